//! Browser bindings for the demo page in `www/`. Every export takes plain
//! text and returns a JSON string; errors surface as a thrown string.
//!
//! The functions behind the bindings are ordinary Rust and are tested
//! natively.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use tforge::bench::internal_baseline;
use tforge::circuit::Circuit;
use tforge::game::{Factorization, GadgetKind, GameConfig, Status};
use tforge::gf2::{BitVec, SymmetricTensor};
use tforge::search::{play_episode, Mode, SearchConfig, UniformEvaluator};
use wasm_bindgen::prelude::*;

/// Largest input the page accepts; search cost grows as 2^n per move.
pub const MAX_QUBITS: usize = 8;

#[derive(Serialize, Debug)]
pub struct TensorInfo {
    pub n: usize,
    pub circuit_t_count: usize,
    pub tensor: String,
    pub entries: usize,
    pub naive_bound: u32,
    pub flattening_rank: u32,
}

#[derive(Serialize, Debug)]
pub struct OptimizeInfo {
    pub n: usize,
    /// Search result.
    pub t_count: u32,
    pub solved: bool,
    pub baseline_t_count: u32,
    /// Which of the two the factors and circuit come from: the lower
    /// T-count, search on ties.
    pub method: &'static str,
    pub factors: Vec<String>,
    pub gadgets: Vec<GadgetSpan>,
    /// Realizing circuit, present for circuit input after verification.
    pub circuit: Option<String>,
}

#[derive(Serialize, Debug)]
pub struct GadgetSpan {
    pub start: usize,
    pub kind: &'static str,
}

#[derive(Serialize, Debug)]
pub struct ScoreInfo {
    pub t_count: u32,
    pub factors: usize,
    pub gadgets: Vec<GadgetSpan>,
}

fn spans(f: &Factorization) -> Vec<GadgetSpan> {
    f.gadget_spans
        .iter()
        .map(|&(start, kind)| GadgetSpan {
            start,
            kind: match kind {
                GadgetKind::Toffoli => "toffoli",
                GadgetKind::Cs => "cs",
            },
        })
        .collect()
}

fn parse_circuit(text: &str) -> Result<Circuit, String> {
    let c = Circuit::parse(text).map_err(|e| e.to_string())?;
    if c.n_qubits() > MAX_QUBITS {
        return Err(format!("the demo handles at most {MAX_QUBITS} qubits"));
    }
    Ok(c)
}

pub fn tensor_info(circuit: &str) -> Result<TensorInfo, String> {
    let c = parse_circuit(circuit)?;
    let t = c.streaming_signature_tensor();
    Ok(TensorInfo {
        n: t.n(),
        circuit_t_count: c.t_count(),
        tensor: t.to_text(),
        entries: t.canonical_entries().len(),
        naive_bound: t.naive_completion_bound(),
        flattening_rank: t.flattening_rank(),
    })
}

/// One evaluation episode with the uniform prior, next to the internal
/// baseline. Input is a circuit (starts with `qubits`) or a tensor in text
/// form.
pub fn optimize_text(input: &str, gadgets: bool, sims: usize, seed: u64) -> Result<OptimizeInfo, String> {
    let circuit = if input.trim_start().starts_with("qubits") { Some(parse_circuit(input)?) } else { None };
    let tensor = match &circuit {
        Some(c) => c.streaming_signature_tensor(),
        None => SymmetricTensor::from_text(input).map_err(|e| e.to_string())?,
    };
    if tensor.n() > MAX_QUBITS {
        return Err(format!("the demo handles at most {MAX_QUBITS} qubits"));
    }
    let game = GameConfig::with_gadgets(gadgets);
    let search = SearchConfig { simulations: sims.clamp(1, 400), ..Default::default() };
    let ep = play_episode(&tensor, &UniformEvaluator, &game, &search, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(seed))
        .map_err(|e| e.to_string())?;
    let baseline = internal_baseline(&tensor);
    let (f, method) = match &baseline.factors {
        Some(b) if b.t_count < ep.factorization.t_count => (b, "baseline"),
        _ => (&ep.factorization, "search"),
    };
    let rebuilt = match &circuit {
        Some(c) => {
            let target = c.phase_polynomial().map_err(|e| e.to_string())?;
            let out = Circuit::reconstruct(&f.factors, &target).map_err(|e| e.to_string())?;
            let ok = out.phase_polynomial().and_then(|p| p.clifford_equivalent(&target)).map_err(|e| e.to_string())?;
            if !ok {
                return Err("reconstructed circuit failed verification".into());
            }
            Some(out.to_string())
        }
        None => None,
    };
    Ok(OptimizeInfo {
        n: tensor.n(),
        t_count: ep.factorization.t_count,
        solved: ep.status == Status::Solved,
        baseline_t_count: baseline.t_count,
        method,
        factors: f.factors.iter().map(|u| u.to_string()).collect(),
        gadgets: spans(f),
        circuit: rebuilt,
    })
}

/// Scores factors (one 0/1 string per line, qubit 0 first) in order.
pub fn score_text(factors: &str, gadgets: bool) -> Result<ScoreInfo, String> {
    let mut parsed = Vec::new();
    for (i, line) in factors.lines().map(str::trim).enumerate().filter(|(_, l)| !l.is_empty()) {
        parsed.push(BitVec::parse(line).ok_or_else(|| format!("line {}: expected a 0/1 string", i + 1))?);
    }
    let n = parsed.first().map(BitVec::len).ok_or("no factors given")?;
    let f = Factorization::new(n, parsed, &GameConfig::with_gadgets(gadgets)).map_err(|e| e.to_string())?;
    Ok(ScoreInfo { t_count: f.t_count, factors: f.factors.len(), gadgets: spans(&f) })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string())).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = signatureTensor)]
pub fn signature_tensor(circuit: &str) -> Result<String, JsValue> {
    to_js(tensor_info(circuit))
}

#[wasm_bindgen]
pub fn optimize(input: &str, gadgets: bool, sims: usize, seed: u64) -> Result<String, JsValue> {
    to_js(optimize_text(input, gadgets, sims, seed))
}

#[wasm_bindgen]
pub fn score(factors: &str, gadgets: bool) -> Result<String, JsValue> {
    to_js(score_text(factors, gadgets))
}

#[cfg(test)]
mod tests {
    use super::*;

    // T on x0+x1, x0 and x2: three parities, so rank at most 3.
    const SMALL: &str = "qubits 3\ncnot 0 1\nt 1\ncnot 0 1\nt 0\nt 2\n";

    #[test]
    fn tensor_of_a_small_circuit() {
        let info = tensor_info(SMALL).unwrap();
        assert_eq!(info.n, 3);
        assert_eq!(info.circuit_t_count, 3);
        assert!(info.flattening_rank <= 3);
        assert!(info.naive_bound >= info.flattening_rank);
        assert!(info.entries > 0);
    }

    #[test]
    fn optimize_emits_a_verified_circuit() {
        let out = optimize_text(SMALL, false, 40, 0).unwrap();
        assert!(out.t_count <= 3);
        let emitted = Circuit::parse(out.circuit.as_deref().unwrap()).unwrap();
        assert_eq!(emitted.t_count() as u32, out.t_count.min(out.baseline_t_count));
        // Tensor input round-trips through the text format.
        let text = tensor_info("qubits 3\nccz 0 1 2\n").unwrap().tensor;
        let out = optimize_text(&text, true, 80, 1).unwrap();
        assert!(out.circuit.is_none());
        assert_eq!(out.baseline_t_count, 7);
        let factors: Vec<BitVec> = out.factors.iter().map(|f| BitVec::parse(f).unwrap()).collect();
        assert_eq!(tforge::gf2::sum_of_cubes(&factors, 3).unwrap(), SymmetricTensor::from_text(&text).unwrap());
    }

    #[test]
    fn scoring_sees_the_toffoli_pattern() {
        let pattern = "100\n010\n110\n001\n101\n011\n111\n";
        assert_eq!(score_text(pattern, true).unwrap().t_count, 2);
        assert_eq!(score_text(pattern, false).unwrap().t_count, 7);
        assert!(score_text("10\n2\n", true).is_err());
        assert!(score_text("", true).is_err());
    }

    #[test]
    fn oversized_input_is_refused() {
        let big = format!("qubits {}\nt 0\n", MAX_QUBITS + 1);
        assert!(tensor_info(&big).is_err());
    }
}
