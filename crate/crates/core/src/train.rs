//! Demonstration, self-play and mixed training.

use std::collections::VecDeque;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, Gate};
use crate::error::{Error, Result};
use crate::game::{toffoli_pattern, Factorization, GameConfig, GameState, Status};
use crate::gf2::{BitVec, SymmetricTensor};
use crate::model::{save_checkpoint, Gradients, Model, ModelConfig, NetInput, NetworkEvaluator};
use crate::search::{play_episode, Mode, SearchConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Demo,
    Rl,
    DemoRl,
}

impl std::str::FromStr for TrainMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "demo" => Ok(TrainMode::Demo),
            "rl" => Ok(TrainMode::Rl),
            "demo_rl" | "demo+rl" => Ok(TrainMode::DemoRl),
            other => Err(Error::InvalidConfig(format!("unknown training mode `{other}`"))),
        }
    }
}

/// Learning-rate schedule over the run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine from `lr` at the first step to 0 after the last.
    Cosine,
}

impl LrSchedule {
    /// Learning rate for 1-based `step` of `steps`.
    pub fn at(self, lr: f64, step: usize, steps: usize) -> f64 {
        match self {
            LrSchedule::Constant => lr,
            LrSchedule::Cosine => {
                let progress = (step - 1) as f64 / steps.max(1) as f64;
                0.5 * lr * (1.0 + (std::f64::consts::PI * progress).cos())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub qubit_range: (usize, usize),
    pub steps: usize,
    pub batch_size: usize,
    pub demo_fraction: f64,
    pub rl_pool_size: usize,
    pub lr: f64,
    pub lr_schedule: LrSchedule,
    pub value_loss_weight: f64,
    pub grad_clip_norm: f64,
    pub seed: u64,
    /// Chance that a demonstration contains a Toffoli pattern (gadgets only).
    pub p_gadget: f64,
    /// Also plant Toffoli patterns when gadgets are off. Without them random
    /// demonstrations almost never contain the seven-factor structure of
    /// controlled gates.
    pub plain_patterns: bool,
    pub buffer_capacity: usize,
    /// Gradient steps per self-play episode once the buffer is warm.
    pub rl_episode_interval: usize,
    /// Self-play episodes played concurrently; 1 is bit-reproducible.
    pub workers: usize,
    pub checkpoint_every: usize,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::Demo,
            qubit_range: (5, 8),
            steps: 100_000,
            batch_size: 128,
            demo_fraction: 0.5,
            rl_pool_size: 100_000,
            lr: 1e-4,
            lr_schedule: LrSchedule::Constant,
            value_loss_weight: 1.0,
            grad_clip_norm: 1.0,
            seed: 0,
            p_gadget: 0.5,
            plain_patterns: false,
            buffer_capacity: 100_000,
            rl_episode_interval: 1,
            workers: 1,
            checkpoint_every: 1000,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, model: &ModelConfig, game: &GameConfig) -> Result<()> {
        let (lo, hi) = self.qubit_range;
        if lo < 1 || lo > hi || hi > model.n_max {
            return Err(Error::ConfigConflict(format!(
                "qubit range {lo}..{hi} must satisfy 1 <= lo <= hi <= n_max ({})",
                model.n_max
            )));
        }
        if !(0.0..=1.0).contains(&self.demo_fraction) || !(0.0..=1.0).contains(&self.p_gadget) {
            return Err(Error::InvalidConfig("demo_fraction and p_gadget must lie in [0, 1]".into()));
        }
        if self.batch_size == 0 || self.workers == 0 || self.rl_episode_interval == 0 {
            return Err(Error::InvalidConfig("batch_size, workers and rl_episode_interval must be positive".into()));
        }
        if self.lr <= 0.0 || self.grad_clip_norm <= 0.0 {
            return Err(Error::InvalidConfig("lr and grad_clip_norm must be positive".into()));
        }
        if self.mode != TrainMode::Demo && self.buffer_capacity < self.batch_size {
            return Err(Error::ConfigConflict("buffer capacity is smaller than the batch".into()));
        }
        model.check_game(game)
    }

    /// Chance of planting a Toffoli pattern in one demonstration.
    pub fn pattern_prob(&self, game: &GameConfig) -> f64 {
        if game.gadgets_enabled || self.plain_patterns {
            self.p_gadget
        } else {
            0.0
        }
    }

    fn demo_rows(&self) -> usize {
        match self.mode {
            TrainMode::Demo => self.batch_size,
            TrainMode::Rl => 0,
            TrainMode::DemoRl => (self.demo_fraction * self.batch_size as f64).round() as usize,
        }
    }
}

fn random_factor<R: Rng>(n: usize, rng: &mut R) -> BitVec {
    BitVec::from_bits(rng.random_range(1..1u32 << n), n)
}

/// A random tensor with a known factorization: rank r ~ U[1, 3n] of uniform
/// nonzero factors, where with probability `p_pattern` (n ≥ 3) a run of
/// seven factors is replaced by a Toffoli pattern. Samples shorter
/// than seven factors become the bare pattern.
pub fn gen_demo<R: Rng>(n: usize, game: &GameConfig, p_pattern: f64, rng: &mut R) -> Result<(SymmetricTensor, Factorization)> {
    let r = rng.random_range(1..=3 * n);
    let mut factors: Vec<BitVec> = (0..r).map(|_| random_factor(n, rng)).collect();
    if n >= 3 && p_pattern > 0.0 && rng.random_bool(p_pattern) {
        let (a, b, c) = loop {
            let (a, b, c) = (random_factor(n, rng), random_factor(n, rng), random_factor(n, rng));
            if a != b && c != a && c != b && c != a.xor(&b) {
                break (a, b, c);
            }
        };
        let pattern = toffoli_pattern(a, b, c);
        if factors.len() < 7 {
            factors = pattern.to_vec();
        } else {
            let s = rng.random_range(0..=factors.len() - 7);
            factors[s..s + 7].copy_from_slice(&pattern);
        }
    }
    let f = Factorization::new(n, factors, game)?;
    Ok((f.tensor()?, f))
}

/// A position inside a demonstration with its imitation targets.
#[derive(Clone, Debug)]
pub struct DemoSample {
    pub state: GameState,
    pub target: BitVec,
    /// Minus the cost of the remaining factors, including gadget refunds
    /// that depend on factors already played.
    pub ret: f64,
    /// Factors from this position on.
    pub remaining: Vec<BitVec>,
}

/// All positions of a demonstration that are still in play.
pub fn demo_samples(tensor: &SymmetricTensor, factors: &[BitVec], game: &GameConfig) -> Result<Vec<DemoSample>> {
    let mut state = GameState::new(tensor.clone(), game);
    let mut snaps = Vec::with_capacity(factors.len());
    for u in factors {
        snaps.push(state.clone());
        state.apply(u, game)?;
    }
    let final_cost = state.t_cost as f64;
    Ok(snaps
        .into_iter()
        .enumerate()
        .filter(|(_, s)| s.status() == Status::Ongoing)
        .map(|(k, s)| {
            let ret = -(final_cost - s.t_cost as f64);
            DemoSample { state: s, target: factors[k], ret, remaining: factors[k..].to_vec() }
        })
        .collect())
}

/// Random CNOT+T circuit: G ~ U[5n, 15n] gates, round(f·G) of them T with
/// f ~ U[0.2, 0.6] on uniform slots and qubits, the rest CNOTs.
pub fn gen_random_circuit<R: Rng>(n: usize, rng: &mut R) -> Circuit {
    assert!(n >= 2, "random circuits need at least two qubits");
    let g = rng.random_range(5 * n..=15 * n);
    let f: f64 = rng.random_range(0.2..0.6);
    let t = (f * g as f64).round() as usize;
    let mut is_t = vec![false; g];
    for i in sample_indices(rng, g, t) {
        is_t[i] = true;
    }
    let mut c = Circuit::new(n).expect("n within range");
    for slot in is_t {
        let gate = if slot {
            Gate::T(rng.random_range(0..n))
        } else {
            let control = rng.random_range(0..n);
            let mut target = rng.random_range(0..n - 1);
            if target >= control {
                target += 1;
            }
            Gate::Cnot { control, target }
        };
        c.push(gate).expect("valid gate");
    }
    c
}

/// Signature tensors of random circuits with n uniform in the qubit range;
/// zero tensors are dropped and redrawn.
pub fn build_rl_pool<R: Rng>(cfg: &TrainConfig, rng: &mut R) -> Result<Vec<SymmetricTensor>> {
    let (lo, hi) = cfg.qubit_range;
    let lo = lo.max(2);
    let mut pool = Vec::with_capacity(cfg.rl_pool_size);
    while pool.len() < cfg.rl_pool_size {
        let n = rng.random_range(lo..=hi.max(lo));
        let t = gen_random_circuit(n, rng).streaming_signature_tensor();
        if !t.is_zero() {
            pool.push(t);
        }
    }
    Ok(pool)
}

/// One supervised row.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainRow {
    pub input: NetInput,
    /// Target distribution over global action masks.
    pub policy: Vec<(u32, f64)>,
    pub value: f64,
}

/// Bounded FIFO of self-play rows shared between episode workers and the
/// trainer.
pub struct ReplayBuffer {
    capacity: usize,
    rows: Mutex<VecDeque<TrainRow>>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> ReplayBuffer {
        ReplayBuffer { capacity, rows: Mutex::new(VecDeque::with_capacity(capacity.min(1 << 16))) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.rows.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn push(&self, row: TrainRow) {
        let mut rows = self.rows.lock().unwrap();
        if rows.len() == self.capacity {
            rows.pop_front();
        }
        rows.push_back(row);
    }

    /// `k` rows drawn uniformly with replacement.
    pub fn sample<R: Rng>(&self, k: usize, rng: &mut R) -> Vec<TrainRow> {
        let rows = self.rows.lock().unwrap();
        if rows.is_empty() {
            return Vec::new();
        }
        (0..k).map(|_| rows[rng.random_range(0..rows.len())].clone()).collect()
    }

    pub fn oldest(&self) -> Option<TrainRow> {
        self.rows.lock().unwrap().front().cloned()
    }
}

/// Mean policy cross-entropy and value error over a batch, with the gradient
/// of their weighted sum.
pub fn batch_gradient(model: &Model, batch: &[TrainRow], value_weight: f64) -> Result<(Gradients, f64, f64)> {
    if batch.is_empty() {
        return Err(Error::ShapeMismatch("empty batch".into()));
    }
    let mut grads = model.zero_gradients();
    let scale = 1.0 / batch.len() as f64;
    let (mut pl, mut vl) = (0.0, 0.0);
    for row in batch {
        let (p, v) = model.accumulate_gradient(&row.input, &row.policy, row.value, value_weight, scale, &mut grads)?;
        pl += p;
        vl += v;
    }
    Ok((grads, pl * scale, vl * scale))
}

/// (total, policy_term, value_term) averaged over the batch.
pub fn loss(model: &Model, batch: &[TrainRow], value_weight: f64) -> Result<(f64, f64, f64)> {
    let (_, p, v) = batch_gradient(model, batch, value_weight)?;
    Ok((p + value_weight * v, p, v))
}

/// Adam with global-norm gradient clipping.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Adam {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &Gradients, clip_norm: f64) {
        let norm = grads.norm();
        let clip = if norm > clip_norm { clip_norm / norm } else { 1.0 };
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads.values[i] * clip;
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            params[i] -= self.lr * (self.m[i] / b1t) / ((self.v[i] / b2t).sqrt() + self.eps);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricRow {
    pub step: usize,
    pub policy_loss: f64,
    pub value_loss: f64,
    /// Mean T-count of evaluation-mode episodes on the evaluation tensors.
    pub eval_t_count: Option<f64>,
}

/// Extra inputs to a training run.
#[derive(Default)]
pub struct TrainOptions<'a> {
    /// Directory for config.json, metrics.csv and checkpoints.
    pub run_dir: Option<PathBuf>,
    /// Self-play tensors; drawn with `build_rl_pool` when absent.
    pub pool: Option<Vec<SymmetricTensor>>,
    /// Tensors whose evaluation T-count is logged at each checkpoint.
    pub eval_tensors: Vec<SymmetricTensor>,
    pub init: Option<Model>,
    pub on_metric: Option<&'a mut dyn FnMut(&MetricRow)>,
}

pub struct TrainOutcome {
    pub model: Model,
    pub metrics: Vec<MetricRow>,
    /// Composition of every batch as (demo rows, buffer rows); kept for tests.
    pub batch_sources: Vec<(usize, usize)>,
}

/// Everything that determines a training run; written as config.json and
/// accepted back by the CLI. Missing sections and fields take defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub game: GameConfig,
    pub search: SearchConfig,
    pub model: ModelConfig,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Demonstration rows for one batch.
pub fn demo_batch<R: Rng>(
    k: usize,
    cfg: &TrainConfig,
    game: &GameConfig,
    model_cfg: &ModelConfig,
    rng: &mut R,
) -> Result<Vec<TrainRow>> {
    let (lo, hi) = cfg.qubit_range;
    let mut rows = Vec::with_capacity(k);
    while rows.len() < k {
        let n = rng.random_range(lo..=hi);
        let (tensor, f) = gen_demo(n, game, cfg.pattern_prob(game), rng)?;
        let samples = demo_samples(&tensor, &f.factors, game)?;
        if samples.is_empty() {
            continue;
        }
        let s = &samples[rng.random_range(0..samples.len())];
        rows.push(TrainRow {
            input: NetInput::from_state(&s.state, game, model_cfg)?,
            policy: vec![(s.target.bits(), 1.0)],
            value: s.ret,
        });
    }
    Ok(rows)
}

fn episode_rows(
    model: &Model,
    tensor: &SymmetricTensor,
    game: &GameConfig,
    search: &SearchConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<TrainRow>> {
    let ev = NetworkEvaluator { model, game: game.clone() };
    let ep = play_episode(tensor, &ev, game, search, Mode::Train, rng)?;
    ep.trajectory
        .iter()
        .map(|step| {
            Ok(TrainRow {
                input: NetInput::from_state(&step.state, game, &model.config)?,
                policy: step
                    .actions
                    .iter()
                    .zip(&step.policy)
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(u, &p)| (u.bits(), p))
                    .collect(),
                value: step.ret,
            })
        })
        .collect()
}

/// Mean evaluation-mode T-count over `tensors`.
pub fn evaluate_model(model: &Model, tensors: &[SymmetricTensor], game: &GameConfig, search: &SearchConfig, seed: u64) -> Result<f64> {
    let ev = NetworkEvaluator { model, game: game.clone() };
    let mut total = 0.0;
    for (i, t) in tensors.iter().enumerate() {
        let mut rng = stream(seed, 1000 + i as u64);
        total += play_episode(t, &ev, game, search, Mode::Eval, &mut rng)?.factorization.t_count as f64;
    }
    Ok(total / tensors.len().max(1) as f64)
}

pub fn train(
    cfg: &TrainConfig,
    game: &GameConfig,
    search: &SearchConfig,
    model_cfg: &ModelConfig,
    mut opts: TrainOptions<'_>,
) -> Result<TrainOutcome> {
    cfg.validate(model_cfg, game)?;
    game.validate()?;
    search.validate()?;
    let mut model = match opts.init.take() {
        Some(m) if m.config == *model_cfg => m,
        Some(_) => return Err(Error::ConfigConflict("initial model config differs from the run config".into())),
        None => Model::init(model_cfg.clone(), &mut stream(cfg.seed, 0))?,
    };
    let mut demo_rng = stream(cfg.seed, 1);
    let mut rl_rng = stream(cfg.seed, 2);
    let mut sample_rng = stream(cfg.seed, 3);

    let demo_rows = cfg.demo_rows();
    let rl_rows = cfg.batch_size - demo_rows;
    let pool = if rl_rows > 0 {
        match opts.pool.take() {
            Some(p) if !p.is_empty() => p,
            Some(_) => return Err(Error::InvalidConfig("empty self-play pool".into())),
            None => build_rl_pool(cfg, &mut stream(cfg.seed, 4))?,
        }
    } else {
        Vec::new()
    };
    let buffer = ReplayBuffer::new(cfg.buffer_capacity);

    let run_dir = opts.run_dir.clone();
    let mut metrics_file = None;
    if let Some(dir) = &run_dir {
        fs::create_dir_all(dir)?;
        let rc = RunConfig { train: cfg.clone(), game: *game, search: *search, model: model_cfg.clone() };
        fs::write(dir.join("config.json"), serde_json::to_string_pretty(&rc)?)?;
        let mut f = fs::File::create(dir.join("metrics.csv"))?;
        writeln!(f, "step,policy_loss,value_loss,eval_t_count")?;
        metrics_file = Some(f);
    }

    let mut adam = Adam::new(model.num_params(), cfg.lr);
    let mut metrics = Vec::new();
    let mut batch_sources = Vec::with_capacity(cfg.steps);
    let mut episodes = 0u64;
    let (mut acc_p, mut acc_v, mut acc_n) = (0.0, 0.0, 0usize);

    let play_round = |model: &Model, episodes: &mut u64, rl_rng: &mut ChaCha8Rng| -> Result<()> {
        if cfg.workers == 1 {
            let t = &pool[rl_rng.random_range(0..pool.len())];
            let mut ep_rng = stream(cfg.seed ^ 0x5eed, 100 + *episodes);
            for row in episode_rows(model, t, game, search, &mut ep_rng)? {
                buffer.push(row);
            }
            *episodes += 1;
            return Ok(());
        }
        let picks: Vec<usize> = (0..cfg.workers).map(|_| rl_rng.random_range(0..pool.len())).collect();
        let base = *episodes;
        let results: Vec<Result<()>> = std::thread::scope(|s| {
            let handles: Vec<_> = picks
                .iter()
                .enumerate()
                .map(|(w, &i)| {
                    let buffer = &buffer;
                    let pool = &pool;
                    s.spawn(move || {
                        let mut ep_rng = stream(cfg.seed ^ 0x5eed, 100 + base + w as u64);
                        for row in episode_rows(model, &pool[i], game, search, &mut ep_rng)? {
                            buffer.push(row);
                        }
                        Ok(())
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("episode worker panicked")).collect()
        });
        *episodes += cfg.workers as u64;
        results.into_iter().collect()
    };

    for step in 1..=cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        if rl_rows > 0 {
            while buffer.len() < cfg.batch_size {
                play_round(&model, &mut episodes, &mut rl_rng)?;
            }
            if step % cfg.rl_episode_interval == 0 {
                play_round(&model, &mut episodes, &mut rl_rng)?;
            }
        }
        if demo_rows > 0 {
            batch.extend(demo_batch(demo_rows, cfg, game, model_cfg, &mut demo_rng)?);
        }
        if rl_rows > 0 {
            batch.extend(buffer.sample(rl_rows, &mut sample_rng));
        }
        batch_sources.push((demo_rows, rl_rows));
        let (grads, pl, vl) = batch_gradient(&model, &batch, cfg.value_loss_weight)?;
        adam.lr = cfg.lr_schedule.at(cfg.lr, step, cfg.steps);
        adam.step(&mut model.params.values, &grads, cfg.grad_clip_norm);
        acc_p += pl;
        acc_v += vl;
        acc_n += 1;

        let checkpoint = step % cfg.checkpoint_every == 0 || step == cfg.steps;
        if step % cfg.log_every == 0 || checkpoint {
            let eval_t_count = if checkpoint && !opts.eval_tensors.is_empty() {
                Some(evaluate_model(&model, &opts.eval_tensors, game, search, cfg.seed)?)
            } else {
                None
            };
            let row = MetricRow {
                step,
                policy_loss: acc_p / acc_n as f64,
                value_loss: acc_v / acc_n as f64,
                eval_t_count,
            };
            (acc_p, acc_v, acc_n) = (0.0, 0.0, 0);
            if let Some(f) = metrics_file.as_mut() {
                let e = row.eval_t_count.map(|v| format!("{v:.4}")).unwrap_or_default();
                writeln!(f, "{},{:.6},{:.6},{}", row.step, row.policy_loss, row.value_loss, e)?;
                f.flush()?;
            }
            if let Some(cb) = opts.on_metric.as_mut() {
                cb(&row);
            }
            metrics.push(row);
        }
        if checkpoint {
            if let Some(dir) = &run_dir {
                let meta = checkpoint_meta(cfg, game, step, episodes);
                save_checkpoint(&model.params, &model.config, &meta, &dir.join("latest.ckpt"))?;
                if step == cfg.steps {
                    save_checkpoint(&model.params, &model.config, &meta, &dir.join("final.ckpt"))?;
                }
            }
        }
    }
    Ok(TrainOutcome { model, metrics, batch_sources })
}

pub fn checkpoint_meta(cfg: &TrainConfig, game: &GameConfig, step: usize, episodes: u64) -> serde_json::Value {
    serde_json::json!({
        "steps": step,
        "mode": cfg.mode,
        "qubit_range": [cfg.qubit_range.0, cfg.qubit_range.1],
        "gadgets": game.gadgets_enabled,
        "batch_size": cfg.batch_size,
        "seed": cfg.seed,
        "episodes": episodes,
    })
}

/// Reads a run directory's metrics.csv.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricRow>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let bad = |m: &str| Error::Parse { line: i + 1, msg: m.to_string() };
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(bad("expected 4 columns"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
        out.push(MetricRow {
            step: cols[0].parse().map_err(|_| bad("bad step"))?,
            policy_loss: num(cols[1])?,
            value_loss: num(cols[2])?,
            eval_t_count: if cols[3].is_empty() { None } else { Some(num(cols[3])?) },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::score_factorization;
    use crate::gf2::sum_of_cubes;

    fn small_model() -> ModelConfig {
        ModelConfig { n_max: 4, embed_dim: 8, layers: 1, heads: 2, ..Default::default() }
    }

    #[test]
    fn demo_replays_to_zero_and_scores_gadgets() {
        let game = GameConfig::with_gadgets(true);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut gadget_seen = false;
        for _ in 0..300 {
            let n = rng.random_range(3..=6);
            let (t, f) = gen_demo(n, &game, 0.5, &mut rng).unwrap();
            assert_eq!(sum_of_cubes(&f.factors, n).unwrap(), t);
            for s in demo_samples(&t, &f.factors, &game).unwrap() {
                let mut r = s.state.tensor.clone();
                for u in &s.remaining {
                    r.xor_cube(u);
                }
                assert!(r.is_zero());
                assert_eq!(s.remaining[0], s.target);
            }
            if f.gadget_spans.iter().any(|(_, k)| *k == crate::game::GadgetKind::Toffoli) {
                gadget_seen = true;
                assert!(score_factorization(&f.factors, &game).unwrap() < f.factors.len() as u32);
            }
        }
        assert!(gadget_seen);
    }

    #[test]
    fn rank_one_and_cancelling_demos() {
        let game = GameConfig::default();
        let u = BitVec::from_bits(0b101, 3);
        let samples = demo_samples(&SymmetricTensor::cube(&u).unwrap(), &[u], &game).unwrap();
        assert_eq!(samples.len(), 1);
        assert_eq!(samples[0].ret, -1.0);
        // [v, v] cancels; the remaining factor still replays to zero.
        let v = BitVec::from_bits(0b011, 3);
        let t = sum_of_cubes(&[u, v, v], 3).unwrap();
        assert_eq!(t, SymmetricTensor::cube(&u).unwrap());
        let s = demo_samples(&t, &[u, v, v], &game).unwrap();
        assert_eq!(s[0].ret, -3.0);
    }

    #[test]
    fn random_circuit_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..2000 {
            let c = gen_random_circuit(5, &mut rng);
            let g = c.gates().len();
            assert!((25..=75).contains(&g));
            let t = c.t_count();
            assert!((5..=45).contains(&t));
        }
        let a = gen_random_circuit(2, &mut ChaCha8Rng::seed_from_u64(9));
        let b = gen_random_circuit(2, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let s = LrSchedule::Cosine;
        assert_eq!(s.at(1e-3, 1, 100), 1e-3);
        assert!((s.at(1e-3, 51, 100) - 5e-4).abs() < 1e-12);
        assert!(s.at(1e-3, 100, 100) > 0.0 && s.at(1e-3, 100, 100) < 1e-6);
        assert_eq!(LrSchedule::Constant.at(1e-3, 100, 100), 1e-3);
    }

    #[test]
    fn pool_contract() {
        let cfg = TrainConfig { rl_pool_size: 10, qubit_range: (3, 5), ..Default::default() };
        let a = build_rl_pool(&cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = build_rl_pool(&cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a.len(), 10);
        assert_eq!(a, b);
        for t in &a {
            assert!(!t.is_zero());
            t.check_waring().unwrap();
        }
    }

    #[test]
    fn buffer_is_fifo_at_capacity() {
        let buf = ReplayBuffer::new(3);
        let row = |v: f64| TrainRow {
            input: NetInput {
                tensor: SymmetricTensor::zero(2),
                history: vec![0; 7],
                mask: 3,
                toffoli_window: 0,
                cs_window: 0,
                gadgets: false,
            },
            policy: vec![(1, 1.0)],
            value: v,
        };
        for v in 0..5 {
            buf.push(row(v as f64));
        }
        assert_eq!(buf.len(), 3);
        assert_eq!(buf.oldest().unwrap().value, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(buf.sample(10, &mut rng).iter().all(|r| r.value >= 2.0));
    }

    #[test]
    fn config_checks() {
        let m = small_model();
        let g = GameConfig::default();
        let bad = TrainConfig { qubit_range: (3, 6), ..Default::default() };
        assert!(matches!(bad.validate(&m, &g), Err(Error::ConfigConflict(_))));
        let m3 = ModelConfig { history_len: 2, ..small_model() };
        let ok = TrainConfig { qubit_range: (2, 4), ..Default::default() };
        assert!(matches!(ok.validate(&m3, &GameConfig::with_gadgets(true)), Err(Error::ConfigConflict(_))));
        assert!("demo_rl".parse::<TrainMode>().unwrap() == TrainMode::DemoRl);
    }

    #[test]
    fn demo_training_reduces_validation_loss() {
        let game = GameConfig::default();
        let mcfg = small_model();
        let cfg = TrainConfig { qubit_range: (3, 4), steps: 200, batch_size: 32, lr: 3e-3, log_every: 50, ..Default::default() };
        let val = demo_batch(256, &cfg, &game, &mcfg, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        let init = Model::init(mcfg.clone(), &mut stream(cfg.seed, 0)).unwrap();
        let before = loss(&init, &val, 1.0).unwrap().0;
        let out = train(&cfg, &game, &SearchConfig::default(), &mcfg, TrainOptions::default()).unwrap();
        let after = loss(&out.model, &val, 1.0).unwrap().0;
        assert!(after < before, "validation loss {before} -> {after}");
    }

    #[test]
    fn demo_fraction_one_matches_demo_batches() {
        let game = GameConfig::default();
        let mcfg = small_model();
        let base = TrainConfig { qubit_range: (3, 4), steps: 5, batch_size: 8, log_every: 5, ..Default::default() };
        let a = train(&base, &game, &SearchConfig::default(), &mcfg, TrainOptions::default()).unwrap();
        let mixed = TrainConfig { mode: TrainMode::DemoRl, demo_fraction: 1.0, ..base.clone() };
        let b = train(&mixed, &game, &SearchConfig::default(), &mcfg, TrainOptions::default()).unwrap();
        assert_eq!(a.batch_sources, b.batch_sources);
        assert_eq!(a.model.params, b.model.params);
        // Same demo stream: the first batches are bitwise identical.
        let mut r1 = stream(base.seed, 1);
        let mut r2 = stream(mixed.seed, 1);
        assert_eq!(
            demo_batch(8, &base, &game, &mcfg, &mut r1).unwrap(),
            demo_batch(mixed.demo_rows(), &mixed, &game, &mcfg, &mut r2).unwrap()
        );
    }

    #[test]
    fn training_is_reproducible() {
        let game = GameConfig::with_gadgets(true);
        let mcfg = small_model();
        let cfg = TrainConfig {
            mode: TrainMode::DemoRl,
            qubit_range: (3, 4),
            steps: 6,
            batch_size: 8,
            rl_pool_size: 5,
            buffer_capacity: 64,
            log_every: 3,
            ..Default::default()
        };
        let search = SearchConfig { simulations: 4, ..Default::default() };
        let a = train(&cfg, &game, &search, &mcfg, TrainOptions::default()).unwrap();
        let b = train(&cfg, &game, &search, &mcfg, TrainOptions::default()).unwrap();
        assert_eq!(a.model.params, b.model.params);
        assert_eq!(a.batch_sources[0], (4, 4));
    }
}
