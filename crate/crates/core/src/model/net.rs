use crate::error::{Error, Result};

use super::input::{prepare, Prepared, ACTION_FEATURES};
use super::ops::*;
use super::{Model, NetInput, VALUE_SCALE};

/// Gradient buffer with the same layout as the parameters.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub values: Vec<f64>,
}

impl Gradients {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn clear(&mut self) {
        self.values.fill(0.0);
    }
}

struct LayerCache {
    y1: Vec<f64>,
    xh1: Vec<f64>,
    rs1: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    probs: Vec<f64>,
    o: Vec<f64>,
    y2: Vec<f64>,
    xh2: Vec<f64>,
    rs2: Vec<f64>,
    h1: Vec<f64>,
    g1: Vec<f64>,
}

/// Forward pass results together with what backpropagation needs.
pub struct NetOutput {
    prep: Prepared,
    layers: Vec<LayerCache>,
    xf: Vec<f64>,
    xhf: Vec<f64>,
    rsf: Vec<f64>,
    r: Vec<f64>,
    g: Vec<f64>,
    hv: Vec<f64>,
    zpsi: Vec<f64>,
    /// Logits of local actions, index = local mask − 1.
    pub logits: Vec<f64>,
    pub value: f64,
}

impl NetOutput {
    pub fn global_logits(&self, n_max: usize) -> Vec<f64> {
        let mut out = vec![f64::NEG_INFINITY; (1usize << n_max) - 1];
        for (l, &g) in self.prep.global.iter().enumerate() {
            out[g as usize - 1] = self.logits[l];
        }
        out
    }

    /// Logit of a global action mask; −∞ when it touches an inactive qubit.
    pub fn logit_for_global(&self, mask: u32) -> f64 {
        self.local_index(mask).map_or(f64::NEG_INFINITY, |i| self.logits[i])
    }

    fn local_index(&self, mask: u32) -> Option<usize> {
        let mut local = 0u32;
        let mut rest = mask;
        for (l, &g) in self.prep.active.iter().enumerate() {
            if mask >> g & 1 == 1 {
                local |= 1 << l;
                rest &= !(1 << g);
            }
        }
        (rest == 0 && local != 0).then(|| local as usize - 1)
    }
}

/// Cell (i, j) of an a×a grid with `d` channels, transposed to (j, i).
fn add_transpose(src: &[f64], dst: &mut [f64], a: usize, d: usize) {
    for i in 0..a {
        for j in 0..a {
            let (s, t) = ((i * a + j) * d, (j * a + i) * d);
            for c in 0..d {
                dst[t + c] += src[s + c];
            }
        }
    }
}

pub(crate) fn forward(model: &Model, input: &NetInput) -> NetOutput {
    let cfg = &model.config;
    let lay = model.layout();
    let p = &model.params.values;
    let prep = prepare(input, cfg);
    let a = prep.a;
    let cells = a * a;
    let d = cfg.embed_dim;
    let f = cfg.ffn_dim();
    let h = cfg.heads;
    let dh = cfg.head_dim();
    let fc = cfg.cell_features();
    let inv_sqrt = 1.0 / (dh as f64).sqrt();

    let mut x = vec![0.0; cells * d];
    matmul_acc(&prep.cells, &p[lay.embed_w..lay.embed_w + fc * d], &mut x, cells, fc, d);
    add_bias(&mut x, &p[lay.embed_b..lay.embed_b + d]);

    let mut layers = Vec::with_capacity(cfg.layers);
    for l in &lay.layers {
        let mut y1 = vec![0.0; cells * d];
        let mut xh1 = vec![0.0; cells * d];
        let mut rs1 = vec![0.0; cells];
        layer_norm(&x, &p[l.ln1_g..l.ln1_g + d], &p[l.ln1_b..l.ln1_b + d], &mut y1, &mut xh1, &mut rs1);
        let mut q = vec![0.0; cells * d];
        let mut k = vec![0.0; cells * d];
        let mut v = vec![0.0; cells * d];
        matmul_acc(&y1, &p[l.wq..l.wq + d * d], &mut q, cells, d, d);
        matmul_acc(&y1, &p[l.wk..l.wk + d * d], &mut k, cells, d, d);
        matmul_acc(&y1, &p[l.wv..l.wv + d * d], &mut v, cells, d, d);

        // Row attention: cell (i, j) attends over (i, ·).
        let mut probs = vec![0.0; a * h * a * a];
        let mut o = vec![0.0; cells * d];
        for i in 0..a {
            for hd in 0..h {
                let c0 = hd * dh;
                for j in 0..a {
                    let qrow = &q[(i * a + j) * d + c0..(i * a + j) * d + c0 + dh];
                    let base = ((i * h + hd) * a + j) * a;
                    let row = &mut probs[base..base + a];
                    for (jj, s) in row.iter_mut().enumerate() {
                        *s = dot(qrow, &k[(i * a + jj) * d + c0..(i * a + jj) * d + c0 + dh]) * inv_sqrt;
                    }
                    softmax_in_place(row);
                    let out = &mut o[(i * a + j) * d + c0..(i * a + j) * d + c0 + dh];
                    for (jj, &pr) in row.iter().enumerate() {
                        let vrow = &v[(i * a + jj) * d + c0..(i * a + jj) * d + c0 + dh];
                        for (ov, vv) in out.iter_mut().zip(vrow) {
                            *ov += pr * vv;
                        }
                    }
                }
            }
        }
        let mut att = vec![0.0; cells * d];
        matmul_acc(&o, &p[l.wo..l.wo + d * d], &mut att, cells, d, d);
        add_bias(&mut att, &p[l.bo..l.bo + d]);
        // Column attention with shared weights on a symmetric grid is the
        // transpose of row attention. Summing both keeps the grid symmetric,
        // so averaging over axis permutations afterwards changes nothing.
        let mut both = att.clone();
        add_transpose(&att, &mut both, a, d);
        for (xv, bv) in x.iter_mut().zip(&both) {
            *xv += bv;
        }

        let mut y2 = vec![0.0; cells * d];
        let mut xh2 = vec![0.0; cells * d];
        let mut rs2 = vec![0.0; cells];
        layer_norm(&x, &p[l.ln2_g..l.ln2_g + d], &p[l.ln2_b..l.ln2_b + d], &mut y2, &mut xh2, &mut rs2);
        let mut h1 = vec![0.0; cells * f];
        matmul_acc(&y2, &p[l.w1..l.w1 + d * f], &mut h1, cells, d, f);
        add_bias(&mut h1, &p[l.b1..l.b1 + f]);
        let g1: Vec<f64> = h1.iter().map(|&z| gelu(z)).collect();
        let mut ff = vec![0.0; cells * d];
        matmul_acc(&g1, &p[l.w2..l.w2 + f * d], &mut ff, cells, f, d);
        add_bias(&mut ff, &p[l.b2..l.b2 + d]);
        for (xv, fv) in x.iter_mut().zip(&ff) {
            *xv += fv;
        }
        layers.push(LayerCache { y1, xh1, rs1, q, k, v, probs, o, y2, xh2, rs2, h1, g1 });
    }

    let mut xf = vec![0.0; cells * d];
    let mut xhf = vec![0.0; cells * d];
    let mut rsf = vec![0.0; cells];
    layer_norm(&x, &p[lay.lnf_g..lay.lnf_g + d], &p[lay.lnf_b..lay.lnf_b + d], &mut xf, &mut xhf, &mut rsf);

    let inv_a = 1.0 / a as f64;
    let mut r = vec![0.0; a * d];
    for i in 0..a {
        for j in 0..a {
            for c in 0..d {
                r[i * d + c] += xf[(i * a + j) * d + c] * inv_a;
            }
        }
    }
    let mut g = vec![0.0; d];
    for i in 0..a {
        for c in 0..d {
            g[c] += r[i * d + c] * inv_a;
        }
    }

    let mut hv = p[lay.val_b1..lay.val_b1 + d].to_vec();
    matmul_acc(&g, &p[lay.val_w1..lay.val_w1 + d * d], &mut hv, 1, d, d);
    let value = VALUE_SCALE * (dot(&hv.iter().map(|&z| gelu(z)).collect::<Vec<_>>(), &p[lay.val_w2..lay.val_w2 + d]) + p[lay.val_b2]);

    let wa = &p[lay.pol_alpha..lay.pol_alpha + d];
    let wb = &p[lay.pol_beta..lay.pol_beta + d];
    let alpha: Vec<f64> = (0..a).map(|i| dot(&r[i * d..(i + 1) * d], wa)).collect();
    let mut beta = vec![0.0; a * a];
    for i in 0..a {
        for j in i + 1..a {
            beta[i * a + j] = dot(&xf[(i * a + j) * d..(i * a + j + 1) * d], wb);
        }
    }

    let n_act = prep.global.len();
    let mut ctx = p[lay.psi_b..lay.psi_b + d].to_vec();
    matmul_acc(&g, &p[lay.psi_wg..lay.psi_wg + d * d], &mut ctx, 1, d, d);
    let mut zpsi = vec![0.0; n_act * d];
    for row in zpsi.chunks_mut(d) {
        row.copy_from_slice(&ctx);
    }
    matmul_acc(&prep.feats, &p[lay.psi_wf..lay.psi_wf + ACTION_FEATURES * d], &mut zpsi, n_act, ACTION_FEATURES, d);
    let wout = &p[lay.psi_out..lay.psi_out + d];

    let mut logits = vec![0.0; n_act];
    for (idx, lg) in logits.iter_mut().enumerate() {
        let u = idx + 1;
        let mut s = 0.0;
        for i in 0..a {
            if u >> i & 1 == 1 {
                s += alpha[i];
                for j in i + 1..a {
                    if u >> j & 1 == 1 {
                        s += beta[i * a + j];
                    }
                }
            }
        }
        let z = &zpsi[idx * d..(idx + 1) * d];
        s += z.iter().zip(wout).map(|(&zv, w)| gelu(zv) * w).sum::<f64>();
        *lg = s;
    }

    NetOutput { prep, layers, xf, xhf, rsf, r, g, hv, zpsi, logits, value }
}

/// Computes the per-sample loss, then backpropagates `scale` times its
/// gradient into `grads`.
pub(crate) fn loss_and_backward(
    model: &Model,
    input: &NetInput,
    policy_target: &[(u32, f64)],
    value_target: f64,
    value_weight: f64,
    scale: f64,
    grads: &mut Gradients,
) -> Result<(f64, f64)> {
    let out = forward(model, input);
    let n_act = out.logits.len();
    let mut target = vec![0.0; n_act];
    for &(mask, w) in policy_target {
        let idx = out
            .local_index(mask)
            .ok_or_else(|| Error::ShapeMismatch(format!("policy target {mask:#b} outside the active mask")))?;
        target[idx] += w;
    }
    let tsum: f64 = target.iter().sum();
    if tsum <= 0.0 {
        return Err(Error::ShapeMismatch("policy target has no mass".into()));
    }
    let mut probs = out.logits.clone();
    softmax_in_place(&mut probs);
    let max = out.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + out.logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    let mut policy_loss = 0.0;
    for (t, l) in target.iter().zip(&out.logits) {
        if *t > 0.0 {
            policy_loss -= t / tsum * (l - lse);
        }
    }
    let diff = out.value - value_target;
    let value_loss = diff * diff;

    let dlogits: Vec<f64> = probs.iter().zip(&target).map(|(p, t)| scale * (p - t / tsum)).collect();
    let dvalue = scale * value_weight * 2.0 * diff;
    backward(model, &out, &dlogits, dvalue, grads);
    Ok((policy_loss, value_loss))
}

pub(crate) fn backward(model: &Model, out: &NetOutput, dlogits: &[f64], dvalue: f64, grads: &mut Gradients) {
    let cfg = &model.config;
    let lay = model.layout();
    let p = &model.params.values;
    let gr = &mut grads.values;
    let a = out.prep.a;
    let cells = a * a;
    let d = cfg.embed_dim;
    let f = cfg.ffn_dim();
    let h = cfg.heads;
    let dh = cfg.head_dim();
    let fc = cfg.cell_features();
    let inv_sqrt = 1.0 / (dh as f64).sqrt();
    let inv_a = 1.0 / a as f64;
    let n_act = out.logits.len();

    // Value head.
    let dv = dvalue * VALUE_SCALE;
    gr[lay.val_b2] += dv;
    let mut dhv = vec![0.0; d];
    for c in 0..d {
        gr[lay.val_w2 + c] += dv * gelu(out.hv[c]);
        dhv[c] = dv * p[lay.val_w2 + c] * gelu_grad(out.hv[c]);
    }
    bias_grad(&dhv, &mut gr[lay.val_b1..lay.val_b1 + d]);
    matmul_at_b_acc(&out.g, &dhv, &mut gr[lay.val_w1..lay.val_w1 + d * d], 1, d, d);
    let mut dg = vec![0.0; d];
    matmul_a_bt_acc(&dhv, &p[lay.val_w1..lay.val_w1 + d * d], &mut dg, 1, d, d);

    // Action-feature path.
    let wout = &p[lay.psi_out..lay.psi_out + d];
    let mut dz = vec![0.0; n_act * d];
    let mut dzsum = vec![0.0; d];
    for idx in 0..n_act {
        let dl = dlogits[idx];
        if dl == 0.0 {
            continue;
        }
        for c in 0..d {
            let z = out.zpsi[idx * d + c];
            gr[lay.psi_out + c] += dl * gelu(z);
            let g = dl * wout[c] * gelu_grad(z);
            dz[idx * d + c] = g;
            dzsum[c] += g;
        }
    }
    matmul_at_b_acc(&out.prep.feats, &dz, &mut gr[lay.psi_wf..lay.psi_wf + ACTION_FEATURES * d], n_act, ACTION_FEATURES, d);
    bias_grad(&dzsum, &mut gr[lay.psi_b..lay.psi_b + d]);
    matmul_at_b_acc(&out.g, &dzsum, &mut gr[lay.psi_wg..lay.psi_wg + d * d], 1, d, d);
    matmul_a_bt_acc(&dzsum, &p[lay.psi_wg..lay.psi_wg + d * d], &mut dg, 1, d, d);

    // Per-qubit and per-pair terms.
    let mut dalpha = vec![0.0; a];
    let mut dbeta = vec![0.0; a * a];
    for (idx, &dl) in dlogits.iter().enumerate() {
        let u = idx + 1;
        for i in 0..a {
            if u >> i & 1 == 1 {
                dalpha[i] += dl;
                for j in i + 1..a {
                    if u >> j & 1 == 1 {
                        dbeta[i * a + j] += dl;
                    }
                }
            }
        }
    }
    let mut dr = vec![0.0; a * d];
    let mut dxf = vec![0.0; cells * d];
    for i in 0..a {
        for c in 0..d {
            gr[lay.pol_alpha + c] += dalpha[i] * out.r[i * d + c];
            dr[i * d + c] += dalpha[i] * p[lay.pol_alpha + c] + dg[c] * inv_a;
        }
        for j in i + 1..a {
            let db = dbeta[i * a + j];
            if db != 0.0 {
                for c in 0..d {
                    gr[lay.pol_beta + c] += db * out.xf[(i * a + j) * d + c];
                    dxf[(i * a + j) * d + c] += db * p[lay.pol_beta + c];
                }
            }
        }
    }
    for i in 0..a {
        for j in 0..a {
            for c in 0..d {
                dxf[(i * a + j) * d + c] += dr[i * d + c] * inv_a;
            }
        }
    }
    let mut dx = vec![0.0; cells * d];
    {
        let (gg, gb) = two_slices(gr, lay.lnf_g, lay.lnf_b, d);
        layer_norm_backward(&dxf, &out.xhf, &out.rsf, &p[lay.lnf_g..lay.lnf_g + d], &mut dx, gg, gb);
    }

    for (l, c) in lay.layers.iter().zip(&out.layers).rev() {
        // Feed-forward sublayer.
        bias_grad(&dx, &mut gr[l.b2..l.b2 + d]);
        matmul_at_b_acc(&c.g1, &dx, &mut gr[l.w2..l.w2 + f * d], cells, f, d);
        let mut dg1 = vec![0.0; cells * f];
        matmul_a_bt_acc(&dx, &p[l.w2..l.w2 + f * d], &mut dg1, cells, d, f);
        for (g, &z) in dg1.iter_mut().zip(&c.h1) {
            *g *= gelu_grad(z);
        }
        bias_grad(&dg1, &mut gr[l.b1..l.b1 + f]);
        matmul_at_b_acc(&c.y2, &dg1, &mut gr[l.w1..l.w1 + d * f], cells, d, f);
        let mut dy2 = vec![0.0; cells * d];
        matmul_a_bt_acc(&dg1, &p[l.w1..l.w1 + d * f], &mut dy2, cells, f, d);
        {
            let (gg, gb) = two_slices(gr, l.ln2_g, l.ln2_b, d);
            layer_norm_backward(&dy2, &c.xh2, &c.rs2, &p[l.ln2_g..l.ln2_g + d], &mut dx, gg, gb);
        }

        // Attention sublayer: x_mid = x_in + att + attᵀ.
        let mut datt = dx.clone();
        add_transpose(&dx, &mut datt, a, d);
        bias_grad(&datt, &mut gr[l.bo..l.bo + d]);
        matmul_at_b_acc(&c.o, &datt, &mut gr[l.wo..l.wo + d * d], cells, d, d);
        let mut dout = vec![0.0; cells * d];
        matmul_a_bt_acc(&datt, &p[l.wo..l.wo + d * d], &mut dout, cells, d, d);

        let mut dq = vec![0.0; cells * d];
        let mut dk = vec![0.0; cells * d];
        let mut dvv = vec![0.0; cells * d];
        let mut dp = vec![0.0; a];
        for i in 0..a {
            for hd in 0..h {
                let c0 = hd * dh;
                for j in 0..a {
                    let base = ((i * h + hd) * a + j) * a;
                    let pr = &c.probs[base..base + a];
                    let dor = &dout[(i * a + j) * d + c0..(i * a + j) * d + c0 + dh];
                    let mut sum = 0.0;
                    for jj in 0..a {
                        let vrow = (i * a + jj) * d + c0;
                        dp[jj] = dot(dor, &c.v[vrow..vrow + dh]);
                        sum += dp[jj] * pr[jj];
                        for e in 0..dh {
                            dvv[vrow + e] += pr[jj] * dor[e];
                        }
                    }
                    let qrow = (i * a + j) * d + c0;
                    for jj in 0..a {
                        let ds = pr[jj] * (dp[jj] - sum) * inv_sqrt;
                        if ds == 0.0 {
                            continue;
                        }
                        let krow = (i * a + jj) * d + c0;
                        for e in 0..dh {
                            dq[qrow + e] += ds * c.k[krow + e];
                            dk[krow + e] += ds * c.q[qrow + e];
                        }
                    }
                }
            }
        }
        matmul_at_b_acc(&c.y1, &dq, &mut gr[l.wq..l.wq + d * d], cells, d, d);
        matmul_at_b_acc(&c.y1, &dk, &mut gr[l.wk..l.wk + d * d], cells, d, d);
        matmul_at_b_acc(&c.y1, &dvv, &mut gr[l.wv..l.wv + d * d], cells, d, d);
        let mut dy1 = vec![0.0; cells * d];
        matmul_a_bt_acc(&dq, &p[l.wq..l.wq + d * d], &mut dy1, cells, d, d);
        matmul_a_bt_acc(&dk, &p[l.wk..l.wk + d * d], &mut dy1, cells, d, d);
        matmul_a_bt_acc(&dvv, &p[l.wv..l.wv + d * d], &mut dy1, cells, d, d);
        {
            let (gg, gb) = two_slices(gr, l.ln1_g, l.ln1_b, d);
            layer_norm_backward(&dy1, &c.xh1, &c.rs1, &p[l.ln1_g..l.ln1_g + d], &mut dx, gg, gb);
        }
    }

    bias_grad(&dx, &mut gr[lay.embed_b..lay.embed_b + d]);
    matmul_at_b_acc(&out.prep.cells, &dx, &mut gr[lay.embed_w..lay.embed_w + fc * d], cells, fc, d);
}

/// Disjoint mutable views of two length-`len` blocks, `first` before `second`.
fn two_slices(v: &mut [f64], first: usize, second: usize, len: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(first + len <= second);
    let (lo, hi) = v.split_at_mut(second);
    (&mut lo[first..first + len], &mut hi[..len])
}
