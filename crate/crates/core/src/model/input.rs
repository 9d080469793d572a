use crate::error::{Error, Result};
use crate::game::{GameConfig, GameState};
use crate::gf2::SymmetricTensor;

use super::ModelConfig;

/// Hand-computed per-action features fed to the policy head.
pub const ACTION_FEATURES: usize = 14;

/// Network input: the tensor and history padded to `n_max` qubits plus the
/// active-qubit mask.
#[derive(Clone, Debug, PartialEq)]
pub struct NetInput {
    pub tensor: SymmetricTensor,
    /// `history_len` previous factors, most recent first; 0 marks an empty slot.
    pub history: Vec<u32>,
    pub mask: u32,
    /// How many of the most recent factors a Toffoli pattern may still use.
    pub toffoli_window: usize,
    /// How many of the most recent factors a CS pattern may still use.
    pub cs_window: usize,
    pub gadgets: bool,
}

impl NetInput {
    pub fn from_state(state: &GameState, game: &GameConfig, cfg: &ModelConfig) -> Result<NetInput> {
        let n = state.n();
        if n > cfg.n_max {
            return Err(Error::ShapeMismatch(format!("{n} qubits exceed n_max {}", cfg.n_max)));
        }
        let tensor = state.tensor.pad_to(cfg.n_max)?;
        let mut history: Vec<u32> = state.history.iter().rev().take(cfg.history_len).map(|u| u.bits()).collect();
        history.resize(cfg.history_len, 0);
        let (toffoli_window, cs_window) = if game.gadgets_enabled {
            (
                (state.moves_played - state.toffoli_window_start()).min(cfg.history_len),
                (state.moves_played - state.protected_prefix).min(cfg.history_len),
            )
        } else {
            (0, 0)
        };
        Ok(NetInput {
            tensor,
            history,
            mask: (1u32 << n) - 1,
            toffoli_window,
            cs_window,
            gadgets: game.gadgets_enabled,
        })
    }

    pub(crate) fn check(&self, cfg: &ModelConfig) -> Result<()> {
        if self.tensor.n() != cfg.n_max {
            return Err(Error::ShapeMismatch(format!("tensor has {} qubits, n_max is {}", self.tensor.n(), cfg.n_max)));
        }
        if self.history.len() != cfg.history_len {
            return Err(Error::ShapeMismatch(format!(
                "{} history planes, expected {}",
                self.history.len(),
                cfg.history_len
            )));
        }
        if self.mask == 0 || self.mask >> cfg.n_max != 0 {
            return Err(Error::ShapeMismatch(format!("active mask {:#b} invalid for n_max {}", self.mask, cfg.n_max)));
        }
        Ok(())
    }

    /// Relabels qubit `q` as `perm[q]` in tensor, history and mask.
    pub fn permute(&self, perm: &[usize]) -> NetInput {
        let map = |x: u32| -> u32 {
            perm.iter().enumerate().filter(|(q, _)| x >> q & 1 == 1).fold(0, |acc, (_, &p)| acc | 1 << p)
        };
        NetInput {
            tensor: self.tensor.permute(perm),
            history: self.history.iter().map(|&h| map(h)).collect(),
            mask: map(self.mask),
            ..self.clone()
        }
    }
}

/// Input restricted to the active qubits, in local indices.
pub(crate) struct Prepared {
    pub a: usize,
    /// Global qubit of each local index, ascending.
    pub active: Vec<usize>,
    /// a² cells × cell features.
    pub cells: Vec<f64>,
    /// Global action mask for each local action mask − 1.
    pub global: Vec<u32>,
    /// Local actions × ACTION_FEATURES.
    pub feats: Vec<f64>,
}

fn binom2(s: u32) -> f64 {
    (s * s.saturating_sub(1) / 2) as f64
}

fn binom3(s: u32) -> f64 {
    (s * s.saturating_sub(1) * s.saturating_sub(2) / 6) as f64
}

/// u1, u2, u1+u2, u4, u1+u4, u2+u4, u1+u2+u4 with u1, u2, u4 independent.
fn toffoli_prefix_ok(w: &[u32]) -> bool {
    let n = w.len();
    if n >= 2 && (w[0] == 0 || w[1] == 0 || w[0] == w[1]) {
        return false;
    }
    if n >= 3 && w[2] != w[0] ^ w[1] {
        return false;
    }
    if n >= 4 && (w[3] == 0 || w[3] == w[0] || w[3] == w[1] || w[3] == w[0] ^ w[1]) {
        return false;
    }
    if n >= 5 && w[4] != w[0] ^ w[3] {
        return false;
    }
    if n >= 6 && w[5] != w[1] ^ w[3] {
        return false;
    }
    !(n >= 7 && w[6] != w[0] ^ w[1] ^ w[3])
}

pub(crate) fn prepare(input: &NetInput, cfg: &ModelConfig) -> Prepared {
    let active: Vec<usize> = (0..cfg.n_max).filter(|&q| input.mask >> q & 1 == 1).collect();
    let a = active.len();
    let local = |x: u32| -> u32 {
        active.iter().enumerate().filter(|(_, &g)| x >> g & 1 == 1).fold(0, |acc, (l, _)| acc | 1 << l)
    };
    let t = &input.tensor;
    let fib: Vec<u32> = (0..a * a).map(|c| local(t.fiber(active[c / a], active[c % a]))).collect();
    let tget = |i: usize, j: usize, k: usize| fib[i * a + j] >> k & 1 == 1;
    let hist: Vec<u32> = input.history.iter().map(|&h| local(h)).collect();
    let lh = cfg.history_len;

    let fq = cfg.qubit_features();
    let mut q = vec![0.0; a * fq];
    for k in 0..a {
        q[k * fq] = 1.0;
        q[k * fq + 1] = tget(k, k, k) as u8 as f64;
        for (s, h) in hist.iter().enumerate() {
            q[k * fq + 2 + s] = (h >> k & 1) as f64;
        }
    }

    let fc = cfg.cell_features();
    let mut cells = vec![0.0; a * a * fc];
    for i in 0..a {
        for j in 0..a {
            let c = &mut cells[(i * a + j) * fc..(i * a + j + 1) * fc];
            c[0] = 0.5 * (tget(i, i, j) as u8 as f64 + tget(i, j, j) as u8 as f64);
            c[1] = (i == j) as u8 as f64;
            let (qi, qj) = (&q[i * fq..(i + 1) * fq], &q[j * fq..(j + 1) * fq]);
            for f in 0..fq {
                c[2 + f] = qi[f] + qj[f];
                c[2 + fq + f] = qi[f] * qj[f];
            }
            let fiber = fib[i * a + j];
            for k in 0..a {
                if fiber >> k & 1 == 1 {
                    for f in 0..fq {
                        c[2 + 2 * fq + f] += 0.25 * q[k * fq + f];
                    }
                }
            }
        }
    }

    // Orbit counts of the tensor: diagonal, pair and triple entries.
    let diag: u32 = (0..a).filter(|&i| tget(i, i, i)).fold(0, |acc, i| acc | 1 << i);
    let mut pair = vec![0.0; a * a];
    let mut tot_p = 0.0;
    let mut tot_t = 0u32;
    for i in 0..a {
        for j in i + 1..a {
            let v = 0.5 * (tget(i, i, j) as u8 as f64 + tget(i, j, j) as u8 as f64);
            pair[i * a + j] = v;
            tot_p += v;
            tot_t += (fib[i * a + j] >> (j + 1)).count_ones();
        }
    }
    let tot_d = diag.count_ones();

    let n_actions = (1usize << a) - 1;
    let mut feats = vec![0.0; n_actions * ACTION_FEATURES];
    let mut global = Vec::with_capacity(n_actions);
    let tof_window = input.toffoli_window.min(6).min(lh);
    let mut bits = Vec::with_capacity(a);
    for u in 1..=n_actions as u32 {
        global.push(active.iter().enumerate().filter(|(l, _)| u >> l & 1 == 1).fold(0u32, |acc, (_, &g)| acc | 1 << g));
        bits.clear();
        bits.extend((0..a).filter(|&i| u >> i & 1 == 1));
        let s = bits.len() as u32;
        let od = (u & diag).count_ones();
        let mut op = 0.0;
        let mut ot = 0u32;
        for (x, &i) in bits.iter().enumerate() {
            for &j in &bits[x + 1..] {
                op += pair[i * a + j];
                ot += (fib[i * a + j] & u).checked_shr(j as u32 + 1).unwrap_or(0).count_ones();
            }
        }
        let (c2, c3) = (binom2(s), binom3(s));
        let (zd, zp, zt) = ((s - od) as f64, c2 - op, c3 - ot as f64);
        let dbound = (zd - od as f64) + 3.0 * (zp - op) + 7.0 * (zt - ot as f64);
        let solves = od == s && op == c2 && ot as f64 == c3 && tot_d == od && tot_p == op && tot_t == ot;

        let mut progress = 0.0;
        for p in (1..=tof_window).rev() {
            let mut w: Vec<u32> = hist[..p].iter().rev().copied().collect();
            w.push(u);
            if toffoli_prefix_ok(&w) {
                progress = (p + 1) as f64 / 7.0;
                break;
            }
        }
        let cs = input.cs_window >= 2 && lh >= 2 && hist[0] != hist[1] && u == hist[0] ^ hist[1];

        let f = &mut feats[(u as usize - 1) * ACTION_FEATURES..u as usize * ACTION_FEATURES];
        f[0] = s as f64 / 4.0;
        f[1] = od as f64 / 4.0;
        f[2] = op / 8.0;
        f[3] = ot as f64 / 8.0;
        f[4] = zd / 4.0;
        f[5] = zp / 8.0;
        f[6] = zt / 8.0;
        f[7] = dbound / 16.0;
        f[8] = solves as u8 as f64;
        f[9] = (hist[0] == u) as u8 as f64;
        f[10] = hist.contains(&u) as u8 as f64;
        f[11] = progress;
        f[12] = cs as u8 as f64;
        f[13] = input.gadgets as u8 as f64;
    }
    Prepared { a, active, cells, global, feats }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toffoli_prefix_rules() {
        let (a, b, c) = (0b001, 0b010, 0b100);
        let full = [a, b, a ^ b, c, a ^ c, b ^ c, a ^ b ^ c];
        for n in 1..=7 {
            assert!(toffoli_prefix_ok(&full[..n]));
        }
        assert!(!toffoli_prefix_ok(&[a, a]));
        assert!(!toffoli_prefix_ok(&[a, b, a ^ b, a ^ b]));
        assert!(!toffoli_prefix_ok(&[a, b, a ^ b, c, b ^ c]));
    }

    #[test]
    fn solving_action_is_flagged() {
        let cfg = ModelConfig { n_max: 3, ..Default::default() };
        let u = crate::gf2::BitVec::parse("110").unwrap();
        let t = SymmetricTensor::cube(&u).unwrap();
        let input = NetInput {
            tensor: t,
            history: vec![0; 7],
            mask: 0b111,
            toffoli_window: 0,
            cs_window: 0,
            gadgets: false,
        };
        let p = prepare(&input, &cfg);
        let solving: Vec<u32> = (0..7).filter(|&x| p.feats[x * ACTION_FEATURES + 8] == 1.0).map(|x| x as u32 + 1).collect();
        assert_eq!(solving, vec![0b011]);
        // playing the solution removes every entry: bound change is minus the bound
        let f7 = p.feats[2 * ACTION_FEATURES + 7] * 16.0;
        assert_eq!(f7, -(input.tensor.naive_completion_bound() as f64));
    }
}
