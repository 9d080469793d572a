//! Internal baseline, evaluation reports, benchmark fixtures and timing.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{Factorization, GameConfig};
use crate::gf2::{sum_of_cubes, BitMatrix, BitVec, SymmetricTensor};
use crate::model::{Model, ModelConfig};
use crate::search::{play_episode, Evaluator, Mode, SearchConfig};
use crate::train::{batch_gradient, gen_random_circuit, Adam, TrainConfig, TrainRow};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMethod {
    Internal,
    Imported,
}

#[derive(Clone, Debug)]
pub struct BaselineResult {
    pub t_count: u32,
    /// Present for the internal method.
    pub factors: Option<Factorization>,
    pub method: BaselineMethod,
}

/// Removes factors that occur an even number of times.
pub fn cancel_duplicates(factors: &[BitVec]) -> Vec<BitVec> {
    let mut count: BTreeMap<BitVec, usize> = BTreeMap::new();
    for f in factors {
        *count.entry(*f).or_default() += 1;
    }
    let odd: HashSet<BitVec> = count.into_iter().filter(|(_, c)| c % 2 == 1).map(|(f, _)| f).collect();
    let mut seen = HashSet::new();
    factors.iter().filter(|f| odd.contains(f) && seen.insert(**f)).copied().collect()
}

/// Linear conditions on y for `Σ (a_k + y_k z)^⊗3 (+ z^⊗3 if |y| odd)` to
/// equal `Σ a_k^⊗3`; one row per off-diagonal orbit (α,α,γ) and (α,β,γ).
fn shift_conditions(factors: &[BitVec], z: BitVec, n: usize) -> BitMatrix {
    let m = factors.len();
    let zb = |i: usize| z.get(i) as u8;
    let mut rows = Vec::with_capacity(n * n * n / 6 + n * n / 2);
    for a in 0..n {
        for c in a + 1..n {
            rows.push(factors.iter().map(|f| (zb(a) & f.get(c) as u8) ^ (zb(c) & f.get(a) as u8) == 1).collect::<Vec<_>>());
        }
    }
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                rows.push(
                    factors
                        .iter()
                        .map(|f| {
                            let (fa, fb, fc) = (f.get(a) as u8, f.get(b) as u8, f.get(c) as u8);
                            let v = (zb(a) & zb(b) & fc)
                                ^ (zb(a) & zb(c) & fb)
                                ^ (zb(b) & zb(c) & fa)
                                ^ (zb(a) & fb & fc)
                                ^ (zb(b) & fa & fc)
                                ^ (zb(c) & fa & fb);
                            v == 1
                        })
                        .collect(),
                );
            }
        }
    }
    if rows.is_empty() {
        return BitMatrix::zeros(0, m);
    }
    BitMatrix::from_rows(&rows)
}

/// One reduction: finds z = a_i + a_j and y with y_i ≠ y_j satisfying the
/// shift conditions, so that a_i and a_j collide and cancel.
fn reduce_once(factors: &[BitVec], n: usize) -> Option<Vec<BitVec>> {
    let m = factors.len();
    let mut by_z: BTreeMap<BitVec, Vec<(usize, usize)>> = BTreeMap::new();
    for i in 0..m {
        for j in i + 1..m {
            by_z.entry(factors[i].xor(&factors[j])).or_default().push((i, j));
        }
    }
    let mut best: Option<Vec<BitVec>> = None;
    for (z, pairs) in by_z {
        let basis = shift_conditions(factors, z, n).nullspace();
        if basis.is_empty() {
            continue;
        }
        for &(i, j) in &pairs {
            let Some(y) = basis.iter().find(|y| y[i] != y[j]) else { continue };
            let mut next: Vec<BitVec> =
                factors.iter().zip(y).map(|(f, &s)| if s { f.xor(&z) } else { *f }).collect();
            if y.iter().filter(|&&s| s).count() % 2 == 1 {
                next.push(z);
            }
            let next = cancel_duplicates(&next);
            if next.len() < m && best.as_ref().map_or(true, |b| next.len() < b.len()) {
                best = Some(next);
            }
        }
        if best.is_some() {
            return best;
        }
    }
    best
}

/// Stand-in for an external T-count optimizer: the monomial factorization,
/// duplicate cancellation, then pair-collision reductions to a fixpoint.
pub fn internal_baseline(t: &SymmetricTensor) -> BaselineResult {
    let game = GameConfig::default();
    let n = t.n();
    let mut factors = cancel_duplicates(&t.monomial_factorization());
    while let Some(next) = reduce_once(&factors, n) {
        debug_assert_eq!(sum_of_cubes(&next, n).ok().as_ref(), Some(t));
        factors = next;
    }
    let f = Factorization::new(n, factors, &game).expect("nonzero factors of matching length");
    BaselineResult { t_count: f.factors.len() as u32, factors: Some(f), method: BaselineMethod::Internal }
}

/// One tensor of an evaluation set.
#[derive(Clone, Debug)]
pub struct EvalItem {
    pub id: String,
    pub tensor: SymmetricTensor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub id: String,
    pub n: usize,
    pub baseline_t: u32,
    pub agent_t: u32,
    pub baseline_method: BaselineMethod,
    /// Wall-clock of the agent episode. Kept out of report.csv and
    /// report.json so those are reproducible; see timing.csv.
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    /// Qubit count, or `None` for all rows.
    pub n: Option<usize>,
    pub rows: usize,
    pub agent_mean: f64,
    pub agent_ci95: f64,
    pub baseline_mean: f64,
    pub baseline_ci95: f64,
    pub improvement_pct: f64,
    pub improvement_ci95: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ci_method: CiMethod,
    pub rows: Vec<EvalRow>,
    pub per_n: Vec<Aggregate>,
    pub overall: Aggregate,
}

/// How confidence intervals are computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CiMethod {
    /// Normal approximation over rows.
    #[default]
    Normal,
    /// Percentile bootstrap with a fixed seed and 2000 resamples.
    Bootstrap,
}

const BOOTSTRAP_RESAMPLES: usize = 2000;

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Mean and 95% half-width.
fn mean_ci(values: &[f64], method: CiMethod) -> (f64, f64) {
    let k = values.len() as f64;
    let m = mean(values);
    if values.len() < 2 {
        return (m, 0.0);
    }
    match method {
        CiMethod::Normal => {
            let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (k - 1.0);
            (m, 1.96 * (var / k).sqrt())
        }
        CiMethod::Bootstrap => {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(0xb007);
            let mut means: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
                .map(|_| (0..values.len()).map(|_| values[rng.random_range(0..values.len())]).sum::<f64>() / k)
                .collect();
            means.sort_by(f64::total_cmp);
            let lo = means[(0.025 * BOOTSTRAP_RESAMPLES as f64) as usize];
            let hi = means[(0.975 * BOOTSTRAP_RESAMPLES as f64) as usize - 1];
            (m, (hi - lo) / 2.0)
        }
    }
}

pub fn aggregate(rows: &[EvalRow], n: Option<usize>, method: CiMethod) -> Aggregate {
    let sel: Vec<&EvalRow> = rows.iter().filter(|r| n.map_or(true, |n| r.n == n)).collect();
    let agent: Vec<f64> = sel.iter().map(|r| r.agent_t as f64).collect();
    let base: Vec<f64> = sel.iter().map(|r| r.baseline_t as f64).collect();
    let improved: Vec<f64> = sel.iter().map(|r| (r.agent_t < r.baseline_t) as u8 as f64).collect();
    let (agent_mean, agent_ci95) = mean_ci(&agent, method);
    let (baseline_mean, baseline_ci95) = mean_ci(&base, method);
    let p = mean(&improved);
    let half = match method {
        CiMethod::Normal => 1.96 * (p * (1.0 - p) / sel.len() as f64).sqrt(),
        CiMethod::Bootstrap => mean_ci(&improved, method).1,
    };
    Aggregate {
        n,
        rows: sel.len(),
        agent_mean,
        agent_ci95,
        baseline_mean,
        baseline_ci95,
        improvement_pct: (100.0 * p).clamp(0.0, 100.0),
        improvement_ci95: 100.0 * half,
    }
}

impl EvalReport {
    pub fn from_rows(rows: Vec<EvalRow>) -> Result<EvalReport> {
        Self::from_rows_with(rows, CiMethod::Normal)
    }

    pub fn from_rows_with(rows: Vec<EvalRow>, ci_method: CiMethod) -> Result<EvalReport> {
        if rows.is_empty() {
            return Err(Error::EmptyEvalSet);
        }
        let ns: Vec<usize> = rows.iter().map(|r| r.n).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
        let per_n = ns.iter().map(|&n| aggregate(&rows, Some(n), ci_method)).collect();
        let overall = aggregate(&rows, None, ci_method);
        Ok(EvalReport { ci_method, rows, per_n, overall })
    }

    /// Replaces baseline T-counts by externally produced ones.
    pub fn apply_imported(&mut self, imported: &HashMap<String, u32>) -> Result<()> {
        let ids: HashSet<&str> = self.rows.iter().map(|r| r.id.as_str()).collect();
        if let Some(bad) = imported.keys().find(|k| !ids.contains(k.as_str())) {
            return Err(Error::UnknownId(bad.clone()));
        }
        for r in &mut self.rows {
            if let Some(&t) = imported.get(&r.id) {
                r.baseline_t = t;
                r.baseline_method = BaselineMethod::Imported;
            }
        }
        *self = EvalReport::from_rows_with(std::mem::take(&mut self.rows), self.ci_method)?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("id,n,baseline_method,baseline_t,agent_t,improved\n");
        for r in &self.rows {
            let method = match r.baseline_method {
                BaselineMethod::Internal => "internal",
                BaselineMethod::Imported => "imported",
            };
            s += &format!(
                "{},{},{},{},{},{}\n",
                r.id,
                r.n,
                method,
                r.baseline_t,
                r.agent_t,
                (r.agent_t < r.baseline_t) as u8
            );
        }
        s
    }

    pub fn summary_table(&self) -> String {
        let mut s = format!(
            "{:>5} {:>6} {:>16} {:>16} {:>18}\n",
            "n", "rows", "agent mean", "baseline mean", "improvement %"
        );
        for a in self.per_n.iter().chain(std::iter::once(&self.overall)) {
            let label = a.n.map(|n| n.to_string()).unwrap_or_else(|| "all".into());
            s += &format!(
                "{:>5} {:>6} {:>9.2} ± {:<4.2} {:>9.2} ± {:<4.2} {:>10.1} ± {:<5.1}\n",
                label,
                a.rows,
                a.agent_mean,
                a.agent_ci95,
                a.baseline_mean,
                a.baseline_ci95,
                a.improvement_pct,
                a.improvement_ci95
            );
        }
        s
    }

    /// Writes report.csv, report.json, timing.csv and plotdata series.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir.join("plotdata"))?;
        fs::write(dir.join("report.csv"), self.to_csv())?;
        let mut timing = String::from("id,n,seconds\n");
        for r in &self.rows {
            timing += &format!("{},{},{:.4}\n", r.id, r.n, r.seconds);
        }
        fs::write(dir.join("timing.csv"), timing)?;
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)?)?;
        let mut p = String::from("n,rows,agent_mean,agent_ci95,baseline_mean,baseline_ci95,improvement_pct,improvement_ci95\n");
        for a in self.per_n.iter().chain(std::iter::once(&self.overall)) {
            p += &format!(
                "{},{},{:.4},{:.4},{:.4},{:.4},{:.2},{:.2}\n",
                a.n.map(|n| n.to_string()).unwrap_or_else(|| "all".into()),
                a.rows,
                a.agent_mean,
                a.agent_ci95,
                a.baseline_mean,
                a.baseline_ci95,
                a.improvement_pct,
                a.improvement_ci95
            );
        }
        fs::write(dir.join("plotdata").join("t_count_by_n.csv"), p)?;
        Ok(())
    }
}

fn item_rng(seed: u64, idx: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(10_000 + idx as u64);
    rng
}

/// Runs one evaluation-mode episode per item and compares against the
/// internal baseline. Rows are independent; `workers` > 1 splits them over
/// threads with identical results.
pub fn evaluate<E: Evaluator + ?Sized>(
    evaluator: &E,
    eval_set: &[EvalItem],
    game: &GameConfig,
    search: &SearchConfig,
    seed: u64,
    workers: usize,
) -> Result<EvalReport> {
    if eval_set.is_empty() {
        return Err(Error::EmptyEvalSet);
    }
    let run = |idx: usize, item: &EvalItem| -> Result<EvalRow> {
        let start = Instant::now();
        let mut rng = item_rng(seed, idx);
        let ep = play_episode(&item.tensor, evaluator, game, search, Mode::Eval, &mut rng)?;
        let seconds = start.elapsed().as_secs_f64();
        let base = internal_baseline(&item.tensor);
        Ok(EvalRow {
            id: item.id.clone(),
            n: item.tensor.n(),
            baseline_t: base.t_count,
            agent_t: ep.factorization.t_count,
            baseline_method: base.method,
            seconds,
        })
    };
    let workers = workers.max(1).min(eval_set.len());
    let rows: Vec<EvalRow> = if workers == 1 {
        eval_set.iter().enumerate().map(|(i, it)| run(i, it)).collect::<Result<_>>()?
    } else {
        let chunk = eval_set.len().div_ceil(workers);
        std::thread::scope(|s| {
            let handles: Vec<_> = eval_set
                .chunks(chunk)
                .enumerate()
                .map(|(c, items)| {
                    let run = &run;
                    s.spawn(move || {
                        items.iter().enumerate().map(|(k, it)| run(c * chunk + k, it)).collect::<Result<Vec<_>>>()
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("eval worker panicked")).collect::<Result<Vec<_>>>()
        })?
        .into_iter()
        .flatten()
        .collect()
    };
    EvalReport::from_rows(rows)
}

/// Reads `id,t_count` rows.
pub fn import_baseline(path: &Path) -> Result<HashMap<String, u32>> {
    parse_baseline_csv(&fs::read_to_string(path)?)
}

pub fn parse_baseline_csv(text: &str) -> Result<HashMap<String, u32>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim().replace(' ', "") == "id,t_count" => {}
        _ => return Err(Error::Parse { line: 1, msg: "expected header `id,t_count`".into() }),
    }
    let mut out = HashMap::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Parse { line: i + 1, msg: format!("malformed row `{line}`") };
        let (id, t) = line.split_once(',').ok_or_else(bad)?;
        let t: u32 = t.trim().parse().map_err(|_| bad())?;
        if id.trim().is_empty() {
            return Err(bad());
        }
        out.insert(id.trim().to_string(), t);
    }
    Ok(out)
}

/// Benchmark circuits with the T-counts reported for them without and with
/// gadgets.
pub const FIXTURES: &[(&str, u32, u32)] = &[("mod5_4", 7, 2), ("nc_toff3", 13, 4), ("barenco_toff3", 13, 4)];

/// Fixture directory: `TFORGE_DATA` if set, else `data/fixtures` under the
/// workspace root.
pub fn fixture_dir() -> PathBuf {
    if let Ok(dir) = std::env::var("TFORGE_DATA") {
        return PathBuf::from(dir);
    }
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/fixtures")
}

pub fn load_fixture(dir: &Path, name: &str) -> Result<SymmetricTensor> {
    let path = dir.join(format!("{name}.sigt"));
    if !path.exists() {
        return Err(Error::MissingFixture(path.display().to_string()));
    }
    SymmetricTensor::load(&path)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub circuit: String,
    pub gadgets: bool,
    pub t_count: u32,
    pub reported: u32,
    #[serde(skip)]
    pub seconds: f64,
    pub factorization: Vec<String>,
}

pub fn run_benchmarks<E: Evaluator + ?Sized>(
    evaluator: &E,
    dir: &Path,
    game: &GameConfig,
    search: &SearchConfig,
    seed: u64,
) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for (idx, &(name, plain, gadget)) in FIXTURES.iter().enumerate() {
        let t = load_fixture(dir, name)?;
        let start = Instant::now();
        let ep = play_episode(&t, evaluator, game, search, Mode::Eval, &mut item_rng(seed, idx))?;
        rows.push(BenchRow {
            circuit: name.to_string(),
            gadgets: game.gadgets_enabled,
            t_count: ep.factorization.t_count,
            reported: if game.gadgets_enabled { gadget } else { plain },
            seconds: start.elapsed().as_secs_f64(),
            factorization: ep.factorization.factors.iter().map(|f| f.to_string()).collect(),
        });
    }
    Ok(rows)
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("circuit,gadgets,t_count,reported\n");
    for r in rows {
        s += &format!("{},{},{},{}\n", r.circuit, r.gadgets, r.t_count, r.reported);
    }
    s
}

pub fn bench_table(rows: &[BenchRow]) -> String {
    let mut s = format!("{:<16} {:>8} {:>8} {:>9} {:>9}\n", "circuit", "gadgets", "T-count", "reported", "seconds");
    for r in rows {
        s += &format!(
            "{:<16} {:>8} {:>8} {:>9} {:>9.2}\n",
            r.circuit,
            if r.gadgets { "on" } else { "off" },
            r.t_count,
            r.reported,
            r.seconds
        );
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimingRow {
    pub n: usize,
    pub steps: usize,
    pub mean_seconds: f64,
    pub std_seconds: f64,
    /// Wall-clock of one evaluation-mode episode on a circuit of the same
    /// shape, with the trained-for-`steps` network.
    pub eval_seconds: f64,
}

/// Per-step training time on random circuits with 10n gates, half of them T.
/// A step builds a batch from the initial positions of fresh circuits, runs
/// forward and backward passes and applies one optimizer update; self-play
/// runs beside the learner and is timed separately as `eval_seconds`.
pub fn timing_benchmark(
    n_list: &[usize],
    game: &GameConfig,
    search: &SearchConfig,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    measured_steps: usize,
    seed: u64,
) -> Result<Vec<TimingRow>> {
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let cfg = ModelConfig { n_max: n, ..model_cfg.clone() };
        let game = GameConfig { action_enum_max_qubits: game.action_enum_max_qubits.max(n), ..*game };
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ n as u64);
        let mut model = Model::init(cfg.clone(), &mut rng)?;
        let mut adam = Adam::new(model.num_params(), train_cfg.lr);
        let mut times = Vec::with_capacity(measured_steps);
        // The first step warms caches and is not measured.
        for step in 0..=measured_steps.max(1) {
            let start = Instant::now();
            let batch = (0..train_cfg.batch_size)
                .map(|_| {
                    let t = nonzero_tensor(n, &mut rng);
                    let state = crate::game::GameState::new(t, &game);
                    let target = state.tensor.monomial_factorization()[0];
                    Ok(TrainRow {
                        input: crate::model::NetInput::from_state(&state, &game, &cfg)?,
                        policy: vec![(target.bits(), 1.0)],
                        value: -(state.tensor.naive_completion_bound() as f64),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let (g, _, _) = batch_gradient(&model, &batch, train_cfg.value_loss_weight)?;
            adam.step(&mut model.params.values, &g, train_cfg.grad_clip_norm);
            if step > 0 {
                times.push(start.elapsed().as_secs_f64());
            }
        }
        let t = nonzero_tensor(n, &mut rng);
        let start = Instant::now();
        let ev = crate::model::NetworkEvaluator { model: &model, game };
        play_episode(&t, &ev, &game, search, Mode::Eval, &mut rng)?;
        let eval_seconds = start.elapsed().as_secs_f64();
        let k = times.len() as f64;
        let mean = times.iter().sum::<f64>() / k;
        let std = (times.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / k).sqrt();
        rows.push(TimingRow { n, steps: times.len(), mean_seconds: mean, std_seconds: std, eval_seconds });
    }
    Ok(rows)
}

fn nonzero_tensor(n: usize, rng: &mut ChaCha8Rng) -> SymmetricTensor {
    loop {
        let t = fixed_shape_circuit(n, rng).streaming_signature_tensor();
        if !t.is_zero() {
            return t;
        }
    }
}

/// 10n gates, exactly half of them T on uniform qubits, the rest CNOTs.
fn fixed_shape_circuit(n: usize, rng: &mut ChaCha8Rng) -> crate::circuit::Circuit {
    use crate::circuit::{Circuit, Gate};
    use rand::seq::SliceRandom;
    use rand::Rng;
    let g = 10 * n;
    let mut slots: Vec<bool> = (0..g).map(|i| i < g / 2).collect();
    slots.shuffle(rng);
    let mut c = Circuit::new(n).expect("n within range");
    for is_t in slots {
        let gate = if is_t {
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

pub fn timing_csv(rows: &[TimingRow]) -> String {
    let mut s = String::from("n,steps,mean_seconds,std_seconds,eval_seconds\n");
    for r in rows {
        s += &format!("{},{},{:.6},{:.6},{:.6}\n", r.n, r.steps, r.mean_seconds, r.std_seconds, r.eval_seconds);
    }
    s
}

/// Eval-set manifest stored next to the tensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub qubit_range: (usize, usize),
    pub items: Vec<ManifestItem>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestItem {
    pub id: String,
    pub n: usize,
    /// Tensor file, relative to the manifest.
    pub file: String,
    /// Source circuit file, relative to the manifest.
    pub circuit: String,
    /// RNG stream under the manifest seed that regenerates this item.
    pub stream: u64,
    /// T gates in the generated circuit.
    pub circuit_t_count: usize,
}

/// Writes `count` random circuits, their tensors and a manifest into `dir`.
/// Item i is drawn from its own stream, so any item can be regenerated alone.
pub fn generate_eval_set(dir: &Path, qubit_range: (usize, usize), count: usize, seed: u64) -> Result<Manifest> {
    use rand::Rng;
    let (lo, hi) = qubit_range;
    if lo < 2 || lo > hi || hi > crate::gf2::MAX_QUBITS {
        return Err(Error::InvalidConfig(format!("qubit range {lo}..{hi} must lie within 2..=16")));
    }
    fs::create_dir_all(dir)?;
    let mut items = Vec::with_capacity(count);
    let mut stream = 0u64;
    while items.len() < count {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        stream += 1;
        let n = rng.random_range(lo..=hi);
        let c = gen_random_circuit(n, &mut rng);
        let t = c.streaming_signature_tensor();
        if t.is_zero() {
            continue;
        }
        let id = format!("c{:05}", items.len());
        let (file, circuit) = (format!("{id}.sigt"), format!("{id}.qc"));
        fs::write(dir.join(&circuit), c.to_string())?;
        fs::write(dir.join(&file), format!("# {id}: n={n}, {} T gates\n{}", c.t_count(), t.to_text()))?;
        items.push(ManifestItem { id, n, file, circuit, stream: stream - 1, circuit_t_count: c.t_count() });
    }
    let manifest = Manifest { seed, qubit_range, items };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn load_eval_set(dir: &Path) -> Result<Vec<EvalItem>> {
    let path = dir.join("manifest.json");
    if !path.exists() {
        return Err(Error::MissingFixture(path.display().to_string()));
    }
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(&path)?)?;
    if manifest.items.is_empty() {
        return Err(Error::EmptyEvalSet);
    }
    manifest
        .items
        .iter()
        .map(|it| Ok(EvalItem { id: it.id.clone(), tensor: SymmetricTensor::load(&dir.join(&it.file))? }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::UniformEvaluator;

    fn bv(s: &str) -> BitVec {
        BitVec::parse(s).unwrap()
    }

    #[test]
    fn baseline_examples() {
        assert_eq!(internal_baseline(&SymmetricTensor::zero(3)).t_count, 0);
        let u = bv("0110");
        let t = SymmetricTensor::cube(&u).unwrap();
        assert_eq!(t.monomial_factorization().len(), 5);
        let r = internal_baseline(&t);
        assert_eq!(r.t_count, 1);
        assert_eq!(r.factors.unwrap().factors, vec![u]);
        let (a, b) = (bv("100"), bv("011"));
        assert_eq!(cancel_duplicates(&[a, a, b]), vec![b]);
    }

    #[test]
    fn baseline_reduces_weight_three_cube() {
        let u = bv("11100");
        let t = SymmetricTensor::cube(&u).unwrap();
        let r = internal_baseline(&t);
        assert_eq!(r.t_count, 1);
        // A Toffoli on parities: the greedy reductions can stall one above the
        // seven-factor pattern.
        let fx = crate::game::toffoli_pattern(bv("10000"), bv("01100"), bv("00011"));
        let t = sum_of_cubes(&fx, 5).unwrap();
        let r = internal_baseline(&t);
        assert!(r.t_count <= 8, "got {}", r.t_count);
        assert_eq!(sum_of_cubes(&r.factors.unwrap().factors, 5).unwrap(), t);
    }

    #[test]
    fn baseline_is_valid_on_random_tensors() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..40 {
            let n = rng.random_range(2..=6);
            let t = gen_random_circuit(n, &mut rng).streaming_signature_tensor();
            let r = internal_baseline(&t);
            let f = r.factors.unwrap();
            assert_eq!(sum_of_cubes(&f.factors, n).unwrap(), t);
            assert!(r.t_count <= t.naive_completion_bound());
        }
    }

    fn row(id: &str, n: usize, b: u32, a: u32) -> EvalRow {
        EvalRow { id: id.into(), n, baseline_t: b, agent_t: a, baseline_method: BaselineMethod::Internal, seconds: 0.0 }
    }

    #[test]
    fn improvement_percentage() {
        let mut rows = Vec::new();
        for i in 0..1000 {
            rows.push(row(&format!("c{i}"), 5, 10, if i < 450 { 9 } else { 10 }));
        }
        let r = EvalReport::from_rows(rows.clone()).unwrap();
        assert!((r.overall.improvement_pct - 45.0).abs() < 1e-9);
        let same: Vec<EvalRow> = rows.iter().map(|r| row(&r.id, 5, 10, 10)).collect();
        assert_eq!(EvalReport::from_rows(same).unwrap().overall.improvement_pct, 0.0);
        assert!(matches!(EvalReport::from_rows(vec![]), Err(Error::EmptyEvalSet)));
    }

    #[test]
    fn bootstrap_interval_is_close_to_normal() {
        let rows: Vec<EvalRow> = (0..400).map(|i| row(&format!("c{i}"), 5, 10, 8 + (i % 5) as u32)).collect();
        let a = EvalReport::from_rows(rows.clone()).unwrap().overall;
        let b = EvalReport::from_rows_with(rows, CiMethod::Bootstrap).unwrap().overall;
        assert_eq!(a.agent_mean, b.agent_mean);
        assert!((a.agent_ci95 - b.agent_ci95).abs() < 0.3 * a.agent_ci95);
        assert!((a.improvement_ci95 - b.improvement_ci95).abs() < 0.3 * a.improvement_ci95);
    }

    #[test]
    fn overall_mean_is_weighted_per_n_mean() {
        let rows = vec![row("a", 5, 10, 8), row("b", 5, 12, 12), row("c", 6, 20, 19)];
        let r = EvalReport::from_rows(rows).unwrap();
        let weighted: f64 = r.per_n.iter().map(|a| a.agent_mean * a.rows as f64).sum::<f64>() / 3.0;
        assert!((weighted - r.overall.agent_mean).abs() < 1e-12);
    }

    #[test]
    fn import_rules() {
        let m = parse_baseline_csv("id,t_count\na,3\nb, 4\n").unwrap();
        assert_eq!(m["b"], 4);
        assert!(matches!(parse_baseline_csv("id,t_count\na,3\nb;4\n"), Err(Error::Parse { line: 3, .. })));
        let mut r = EvalReport::from_rows(vec![row("a", 5, 10, 5)]).unwrap();
        r.apply_imported(&m.iter().filter(|(k, _)| *k == "a").map(|(k, v)| (k.clone(), *v)).collect()).unwrap();
        assert_eq!(r.rows[0].baseline_method, BaselineMethod::Imported);
        assert_eq!(r.rows[0].baseline_t, 3);
        assert!(matches!(r.apply_imported(&m), Err(Error::UnknownId(id)) if id == "b"));
    }

    #[test]
    fn evaluation_is_deterministic_across_workers() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let items: Vec<EvalItem> = (0..4)
            .map(|i| EvalItem { id: format!("c{i}"), tensor: gen_random_circuit(3, &mut rng).streaming_signature_tensor() })
            .filter(|it| !it.tensor.is_zero())
            .collect();
        let game = GameConfig::default();
        let search = SearchConfig { simulations: 16, ..Default::default() };
        let a = evaluate(&UniformEvaluator, &items, &game, &search, 3, 1).unwrap();
        let b = evaluate(&UniformEvaluator, &items, &game, &search, 3, 3).unwrap();
        let strip = |r: &EvalReport| r.rows.iter().map(|x| (x.id.clone(), x.agent_t, x.baseline_t)).collect::<Vec<_>>();
        assert_eq!(strip(&a), strip(&b));
    }

    #[test]
    fn timing_rows_cover_each_n() {
        let model = ModelConfig { embed_dim: 8, layers: 1, heads: 2, ..Default::default() };
        let train = TrainConfig { batch_size: 4, ..Default::default() };
        let search = SearchConfig { simulations: 2, ..Default::default() };
        let rows = timing_benchmark(&[3], &GameConfig::default(), &search, &model, &train, 10, 0).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].steps, 10);
        assert!(rows[0].mean_seconds > 0.0 && rows[0].eval_seconds > 0.0);
    }

    #[test]
    fn missing_fixture_is_reported() {
        let dir = std::env::temp_dir().join("tforge-no-fixtures");
        assert!(matches!(load_fixture(&dir, "mod5_4"), Err(Error::MissingFixture(_))));
    }

    #[test]
    fn fixtures_load() {
        for (name, _, _) in FIXTURES {
            let t = load_fixture(&fixture_dir(), name).unwrap();
            assert!(!t.is_zero());
        }
    }
}
