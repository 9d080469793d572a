use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use tforge::bench::{self, BaselineMethod, CiMethod, EvalReport};
use tforge::circuit::{Circuit, PhasePoly};
use tforge::game::{Factorization, GameConfig};
use tforge::gf2::{SymmetricTensor, BINARY_MAGIC};
use tforge::model::{load_checkpoint, Model, ModelConfig, NetworkEvaluator};
use tforge::search::{play_episode, Evaluator, Mode, SearchConfig, UniformEvaluator};
use tforge::train::{self, LrSchedule, MetricRow, RunConfig, TrainMode, TrainOptions};
use tforge::Error;

use crate::{
    AgentArgs, BenchArgs, CiArg, Cli, Command, EvalArgs, GenArgs, ModeArg, OptimizeArgs, ScheduleArg, TensorArgs, TimeArgs,
    TrainArgs,
    VerifyArgs,
};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failed(String),
    Core(Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failed(_) => 1,
            CliError::Core(e) => match e {
                Error::MissingHeader { .. }
                | Error::UnknownGate { .. }
                | Error::QubitOutOfRange { .. }
                | Error::DuplicateOperand { .. }
                | Error::Parse { .. }
                | Error::InvalidConfig(_)
                | Error::ConfigConflict(_)
                | Error::UnsupportedQubits(_)
                | Error::NotWaring(..) => 2,
                _ => 1,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Failed(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cli: Cli, argv: &[String]) -> Result<()> {
    match cli.command {
        Command::Tensor(a) => cmd_tensor(a, argv),
        Command::Optimize(a) => cmd_optimize(a, argv),
        Command::Train(a) => cmd_train(a, argv),
        Command::Eval(a) => cmd_eval(a, argv),
        Command::Gen(a) => cmd_gen(a, argv),
        Command::Bench(a) => cmd_bench(a, argv),
        Command::Verify(a) => cmd_verify(a),
        Command::Time(a) => cmd_time(a, argv),
    }
}

/// `lo..hi` inclusive, or a single count.
pub fn parse_range(s: &str) -> Result<(usize, usize)> {
    let bad = || CliError::Usage(format!("bad qubit range `{s}`; expected `lo..hi` or `n`"));
    let (lo, hi) = match s.split_once("..") {
        Some((lo, hi)) => (lo.trim().parse().map_err(|_| bad())?, hi.trim().trim_start_matches('=').parse().map_err(|_| bad())?),
        None => {
            let n = s.trim().parse().map_err(|_| bad())?;
            (n, n)
        }
    };
    if lo > hi {
        return Err(bad());
    }
    Ok((lo, hi))
}

/// Records how a run was invoked, next to its outputs.
fn write_echo(path: &Path, argv: &[String], config: serde_json::Value) -> Result<()> {
    let echo = json!({ "argv": argv, "config": config, "version": env!("CARGO_PKG_VERSION") });
    fs::write(path, serde_json::to_string_pretty(&echo)? + "\n")?;
    Ok(())
}

fn echo_beside(output: &Option<PathBuf>, argv: &[String], config: serde_json::Value) -> Result<()> {
    match output {
        Some(p) => {
            let mut name = p.file_name().unwrap_or_default().to_os_string();
            name.push(".invocation.json");
            write_echo(&p.with_file_name(name), argv, config)
        }
        None => {
            eprintln!("invocation: {}", json!({ "argv": argv, "config": config }));
            Ok(())
        }
    }
}

fn read_circuit(path: &Path) -> Result<Circuit> {
    Ok(Circuit::parse(&fs::read_to_string(path)?)?)
}

fn tensor_cmd_output(t: &SymmetricTensor, output: &Option<PathBuf>) -> Result<()> {
    match output {
        Some(p) => t.save(p)?,
        None => print!("{}", t.to_text()),
    }
    Ok(())
}

fn cmd_tensor(a: TensorArgs, argv: &[String]) -> Result<()> {
    let c = read_circuit(&a.circuit)?;
    let t = c.streaming_signature_tensor();
    if a.verify {
        let oracle = c.signature_tensor()?;
        if oracle != t {
            return Err(CliError::Failed("streaming and truth-table tensors differ".into()));
        }
        eprintln!("verified: streaming and truth-table extraction agree");
    }
    tensor_cmd_output(&t, &a.output)?;
    echo_beside(&a.output, argv, json!({ "circuit": a.circuit, "verify": a.verify }))
}

enum Input {
    Tensor(SymmetricTensor),
    Circuit(Circuit),
}

/// Circuits start with a `qubits` header; anything else is a tensor.
fn read_input(path: &Path) -> Result<Input> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(BINARY_MAGIC) {
        return Ok(Input::Tensor(SymmetricTensor::load(path)?));
    }
    let text = String::from_utf8_lossy(&bytes);
    let first = text.lines().map(|l| l.split('#').next().unwrap_or("").trim()).find(|l| !l.is_empty());
    if first.is_some_and(|l| l.to_ascii_lowercase().starts_with("qubits")) {
        Ok(Input::Circuit(Circuit::parse(&text)?))
    } else {
        let t = SymmetricTensor::from_text(&text)?;
        t.check_waring()?;
        Ok(Input::Tensor(t))
    }
}

fn search_config(a: &AgentArgs) -> Result<SearchConfig> {
    let s = SearchConfig { simulations: a.sims, ..Default::default() };
    s.validate()?;
    Ok(s)
}

fn load_agent(a: &AgentArgs, game: &GameConfig) -> Result<Option<Model>> {
    let Some(path) = &a.agent else { return Ok(None) };
    let model = load_checkpoint(path)?.into_model()?;
    model.config.check_game(game)?;
    Ok(Some(model))
}

fn check_fits(model: &Option<Model>, n: usize) -> Result<()> {
    if let Some(m) = model {
        if n > m.config.n_max {
            return Err(CliError::Usage(format!("{n} qubits exceed the agent's n_max of {}", m.config.n_max)));
        }
    }
    Ok(())
}

fn agent_echo(a: &AgentArgs) -> serde_json::Value {
    json!({ "agent": a.agent, "gadgets": a.gadgets, "sims": a.sims, "seed": a.seed })
}

fn with_evaluator<T>(model: &Option<Model>, game: &GameConfig, f: impl FnOnce(&dyn Evaluator) -> Result<T>) -> Result<T> {
    match model {
        Some(m) => f(&NetworkEvaluator { model: m, game: *game }),
        None => f(&UniformEvaluator),
    }
}

fn cmd_optimize(a: OptimizeArgs, argv: &[String]) -> Result<()> {
    let game = GameConfig::with_gadgets(a.agent.gadgets);
    let search = search_config(&a.agent)?;
    let model = load_agent(&a.agent, &game)?;
    let input = read_input(&a.input)?;
    let tensor = match &input {
        Input::Tensor(t) => t.clone(),
        Input::Circuit(c) => c.streaming_signature_tensor(),
    };
    check_fits(&model, tensor.n())?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.agent.seed);
    let ep = with_evaluator(&model, &game, |ev| Ok(play_episode(&tensor, ev, &game, &search, Mode::Eval, &mut rng)?))?;
    let f = &ep.factorization;
    eprintln!("t_count {} ({:?}, {} factors)", f.t_count, ep.status, f.factors.len());
    let text = f.to_text();
    match &a.output {
        Some(p) => fs::write(p, &text)?,
        None => print!("{text}"),
    }
    if let Some(path) = &a.emit_circuit {
        let target = match &input {
            Input::Circuit(c) => c.phase_polynomial()?,
            Input::Tensor(t) => Circuit::from_factors(&t.monomial_factorization(), t.n())?.phase_polynomial()?,
        };
        let rebuilt = Circuit::reconstruct(&f.factors, &target)?;
        if !verified(&rebuilt, &target)? {
            return Err(CliError::Failed("reconstructed circuit is not Clifford-equivalent to the input".into()));
        }
        fs::write(path, rebuilt.to_string())?;
        eprintln!("circuit verified: Clifford-equivalent to the input, {} T gates", rebuilt.t_count());
    }
    let mut echo = agent_echo(&a.agent);
    echo["input"] = json!(a.input);
    echo["emit_circuit"] = json!(a.emit_circuit);
    echo_beside(&a.output, argv, echo)
}

fn verified(c: &Circuit, target: &PhasePoly) -> Result<bool> {
    Ok(c.phase_polynomial()?.clifford_equivalent(target)?)
}

fn cmd_train(a: TrainArgs, argv: &[String]) -> Result<()> {
    let mut rc: RunConfig = match &a.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)
            .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?,
        None => RunConfig::default(),
    };
    if let Some(m) = a.mode {
        rc.train.mode = match m {
            ModeArg::Demo => TrainMode::Demo,
            ModeArg::Rl => TrainMode::Rl,
            ModeArg::DemoRl => TrainMode::DemoRl,
        };
    }
    if let Some(q) = &a.qubits {
        rc.train.qubit_range = parse_range(q)?;
    }
    macro_rules! set {
        ($($field:expr => $flag:expr),* $(,)?) => { $(if let Some(v) = $flag { $field = v; })* };
    }
    set!(
        rc.train.steps => a.steps,
        rc.train.seed => a.seed,
        rc.train.batch_size => a.batch_size,
        rc.train.lr => a.lr,
        rc.train.workers => a.workers,
        rc.train.checkpoint_every => a.checkpoint_every,
        rc.search.simulations => a.sims,
        rc.model.embed_dim => a.embed_dim,
        rc.model.layers => a.layers,
        rc.model.heads => a.heads,
        rc.model.n_max => a.n_max,
    );
    if let Some(s) = a.lr_schedule {
        rc.train.lr_schedule = match s {
            ScheduleArg::Constant => LrSchedule::Constant,
            ScheduleArg::Cosine => LrSchedule::Cosine,
        };
    }
    rc.game.gadgets_enabled |= a.gadgets;
    rc.train.plain_patterns |= a.plain_patterns;
    rc.model.validate()?;
    rc.search.validate()?;
    rc.game.validate()?;
    rc.train.validate(&rc.model, &rc.game)?;

    let eval_tensors = if a.eval_fixtures {
        let dir = bench::fixture_dir();
        bench::FIXTURES
            .iter()
            .map(|(name, _, _)| bench::load_fixture(&dir, name))
            .filter(|t| t.as_ref().map_or(true, |t| t.n() <= rc.model.n_max))
            .collect::<tforge::Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    fs::create_dir_all(&a.out)?;
    write_echo(&a.out.join("invocation.json"), argv, serde_json::to_value(&rc)?)?;
    let mut log = |m: &MetricRow| match m.eval_t_count {
        Some(t) => eprintln!("step {:>7}  policy {:.4}  value {:.4}  eval T {:.2}", m.step, m.policy_loss, m.value_loss, t),
        None => eprintln!("step {:>7}  policy {:.4}  value {:.4}", m.step, m.policy_loss, m.value_loss),
    };
    let opts = TrainOptions { run_dir: Some(a.out.clone()), eval_tensors, on_metric: Some(&mut log), ..Default::default() };
    let out = train::train(&rc.train, &rc.game, &rc.search, &rc.model, opts)?;
    eprintln!(
        "trained {} steps ({} parameters); checkpoint {}",
        rc.train.steps,
        out.model.num_params(),
        a.out.join("final.ckpt").display()
    );
    Ok(())
}

fn cmd_eval(a: EvalArgs, argv: &[String]) -> Result<()> {
    let game = GameConfig::with_gadgets(a.agent.gadgets);
    let search = search_config(&a.agent)?;
    let model = load_agent(&a.agent, &game)?;
    let set = bench::load_eval_set(&a.set)?;
    for item in &set {
        check_fits(&model, item.tensor.n())?;
    }
    let imported: Option<HashMap<String, u32>> =
        if a.baseline == "internal" { None } else { Some(bench::import_baseline(Path::new(&a.baseline))?) };
    let mut report =
        with_evaluator(&model, &game, |ev| Ok(bench::evaluate(ev, &set, &game, &search, a.agent.seed, a.workers)?))?;
    if a.ci == CiArg::Bootstrap {
        report = EvalReport::from_rows_with(report.rows, CiMethod::Bootstrap)?;
    }
    if let Some(m) = &imported {
        report.apply_imported(m)?;
    }
    report.write(&a.out)?;
    let method = if report.rows.iter().any(|r| r.baseline_method == BaselineMethod::Imported) {
        "imported"
    } else {
        "internal"
    };
    println!("baseline: {method}");
    print!("{}", report.summary_table());
    let mut echo = agent_echo(&a.agent);
    echo["set"] = json!(a.set);
    echo["baseline"] = json!(a.baseline);
    echo["workers"] = json!(a.workers);
    echo["ci"] = json!(format!("{:?}", a.ci).to_lowercase());
    write_echo(&a.out.join("invocation.json"), argv, echo)
}

fn cmd_gen(a: GenArgs, argv: &[String]) -> Result<()> {
    let range = parse_range(&a.qubits)?;
    let manifest = bench::generate_eval_set(&a.out, range, a.count, a.seed)?;
    eprintln!("wrote {} circuits and tensors to {}", manifest.items.len(), a.out.display());
    write_echo(&a.out.join("invocation.json"), argv, json!({ "qubits": range, "count": a.count, "seed": a.seed }))
}

fn cmd_bench(a: BenchArgs, argv: &[String]) -> Result<()> {
    let game = GameConfig::with_gadgets(a.agent.gadgets);
    let search = search_config(&a.agent)?;
    let model = load_agent(&a.agent, &game)?;
    let dir = a.fixtures.clone().unwrap_or_else(bench::fixture_dir);
    let rows = with_evaluator(&model, &game, |ev| Ok(bench::run_benchmarks(ev, &dir, &game, &search, a.agent.seed)?))?;
    print!("{}", bench::bench_table(&rows));
    if let Some(out) = &a.out {
        fs::create_dir_all(out)?;
        fs::write(out.join("bench.csv"), bench::bench_csv(&rows))?;
        fs::write(out.join("bench.json"), serde_json::to_string_pretty(&rows)?)?;
        let mut timing = String::from("circuit,seconds\n");
        for r in &rows {
            timing += &format!("{},{:.3}\n", r.circuit, r.seconds);
        }
        fs::write(out.join("timing.csv"), timing)?;
        let mut echo = agent_echo(&a.agent);
        echo["fixtures"] = json!(dir);
        write_echo(&out.join("invocation.json"), argv, echo)?;
    }
    Ok(())
}

fn cmd_verify(a: VerifyArgs) -> Result<()> {
    let mut checked = false;
    if let (Some(tp), Some(fp)) = (&a.tensor, &a.factors) {
        checked = true;
        let t = SymmetricTensor::load(tp)?;
        let game = GameConfig::with_gadgets(a.gadgets);
        let f = Factorization::from_text(&fs::read_to_string(fp)?, &game)?;
        if f.n != t.n() || f.tensor()? != t {
            return Err(CliError::Failed("factorization does not reconstruct the tensor".into()));
        }
        println!("factorization ok: {} factors, t_count {}", f.factors.len(), f.t_count);
    }
    if let Some(paths) = &a.circuits {
        checked = true;
        let (x, y) = (read_circuit(&paths[0])?, read_circuit(&paths[1])?);
        if x.n_qubits() != y.n_qubits() || !verified(&x, &y.phase_polynomial()?)? {
            return Err(CliError::Failed("circuits are not Clifford-equivalent".into()));
        }
        println!("circuits are Clifford-equivalent (T gates {} vs {})", x.t_count(), y.t_count());
    }
    if let Some(p) = &a.checkpoint {
        checked = true;
        let ckpt = load_checkpoint(p)?;
        let steps = ckpt.steps();
        let model = ckpt.into_model()?;
        println!("checkpoint ok: {} parameters, {} steps, version {}", model.num_params(), steps, model.params.version);
    }
    if !checked {
        return Err(CliError::Usage("nothing to verify; pass --tensor/--factors, --circuits or --checkpoint".into()));
    }
    Ok(())
}

fn cmd_time(a: TimeArgs, argv: &[String]) -> Result<()> {
    let ns: Vec<usize> = a
        .qubits
        .split(',')
        .map(|s| s.trim().parse().map_err(|_| CliError::Usage(format!("bad qubit list `{}`", a.qubits))))
        .collect::<Result<_>>()?;
    let model = ModelConfig { embed_dim: a.embed_dim, layers: a.layers, heads: a.heads, ..Default::default() };
    for &n in &ns {
        ModelConfig { n_max: n, ..model.clone() }.validate()?;
    }
    let search = SearchConfig { simulations: a.sims, ..Default::default() };
    search.validate()?;
    let tcfg = train::TrainConfig { batch_size: a.batch_size, ..Default::default() };
    let rows = bench::timing_benchmark(&ns, &GameConfig::default(), &search, &model, &tcfg, a.steps, a.seed)?;
    println!("{:>4} {:>6} {:>14} {:>14}", "n", "steps", "step (s)", "eval ep (s)");
    for r in &rows {
        println!("{:>4} {:>6} {:>7.4} ± {:<5.4} {:>14.4}", r.n, r.steps, r.mean_seconds, r.std_seconds, r.eval_seconds);
    }
    if let Some(out) = &a.out {
        fs::create_dir_all(out.join("plotdata"))?;
        let csv = bench::timing_csv(&rows);
        fs::write(out.join("timing.csv"), &csv)?;
        fs::write(out.join("plotdata").join("step_time_by_n.csv"), &csv)?;
        write_echo(
            &out.join("invocation.json"),
            argv,
            json!({ "qubits": ns, "steps": a.steps, "sims": a.sims, "model": model, "batch_size": a.batch_size, "seed": a.seed }),
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qubit_ranges() {
        assert_eq!(parse_range("5..8").unwrap(), (5, 8));
        assert_eq!(parse_range("5..=8").unwrap(), (5, 8));
        assert_eq!(parse_range("6").unwrap(), (6, 6));
        assert!(parse_range("8..5").is_err());
        assert!(parse_range("a..b").is_err());
    }

    #[test]
    fn input_errors_are_usage_errors() {
        let e: CliError = Error::UnknownGate { line: 2, name: "H".into() }.into();
        assert_eq!(e.exit_code(), 2);
        let e: CliError = Error::CorruptCheckpoint("x".into()).into();
        assert_eq!(e.exit_code(), 1);
    }
}
