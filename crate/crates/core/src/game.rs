//! The tensor decomposition game. A state is the residual signature tensor;
//! a move XORs the cube of a nonzero factor into it and costs one T gate,
//! with refunds when consecutive moves complete a Toffoli or CS gadget.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf2::{all_nonzero, sum_of_cubes, BitVec, SymmetricTensor};

/// Number of recent factors kept in the state; the Toffoli window.
pub const HISTORY_LEN: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GameConfig {
    pub gadgets_enabled: bool,
    /// T cost of a completed Toffoli pattern (7 factors).
    pub toffoli_cost: u32,
    /// T cost of a completed CS pattern (3 factors).
    pub cs_cost: u32,
    /// Episodes are truncated after `ceil(multiplier * naive bound)` moves.
    pub max_moves_multiplier: f64,
    pub action_enum_max_qubits: usize,
}

impl Default for GameConfig {
    fn default() -> Self {
        GameConfig {
            gadgets_enabled: false,
            toffoli_cost: 2,
            cs_cost: 3,
            max_moves_multiplier: 2.0,
            action_enum_max_qubits: 12,
        }
    }
}

impl GameConfig {
    pub fn with_gadgets(gadgets_enabled: bool) -> Self {
        GameConfig { gadgets_enabled, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.toffoli_cost > 7 || self.cs_cost > 3 {
            return Err(Error::InvalidConfig(format!(
                "gadget costs must satisfy toffoli_cost <= 7 and cs_cost <= 3 (got {} and {})",
                self.toffoli_cost, self.cs_cost
            )));
        }
        if !(self.max_moves_multiplier.is_finite() && self.max_moves_multiplier > 0.0) {
            return Err(Error::InvalidConfig("max_moves_multiplier must be positive".into()));
        }
        Ok(())
    }

    fn toffoli_refund(&self) -> i32 {
        7 - self.toffoli_cost as i32
    }

    fn cs_refund(&self) -> i32 {
        3 - self.cs_cost as i32
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GadgetKind {
    Toffoli,
    Cs,
}

impl GadgetKind {
    pub fn span(&self) -> usize {
        match self {
            GadgetKind::Toffoli => 7,
            GadgetKind::Cs => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Solved,
    Truncated,
    Ongoing,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GameState {
    pub tensor: SymmetricTensor,
    /// Most recent factors, oldest first; at most [`HISTORY_LEN`].
    pub history: Vec<BitVec>,
    pub moves_played: usize,
    pub t_cost: i32,
    /// Moves before this index already belong to a matched gadget.
    pub protected_prefix: usize,
    pub max_moves: usize,
    /// Start of the most recent CS match; a Toffoli completed over the same
    /// moves absorbs it.
    last_cs: Option<usize>,
}

impl GameState {
    pub fn new(tensor: SymmetricTensor, cfg: &GameConfig) -> GameState {
        let bound = tensor.naive_completion_bound() as f64;
        let max_moves = (cfg.max_moves_multiplier * bound).ceil() as usize;
        GameState {
            tensor,
            history: Vec::with_capacity(HISTORY_LEN),
            moves_played: 0,
            t_cost: 0,
            protected_prefix: 0,
            max_moves,
            last_cs: None,
        }
    }

    pub fn n(&self) -> usize {
        self.tensor.n()
    }

    pub fn status(&self) -> Status {
        if self.tensor.is_zero() {
            Status::Solved
        } else if self.moves_played >= self.max_moves {
            Status::Truncated
        } else {
            Status::Ongoing
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.status() != Status::Ongoing
    }

    /// 0 when solved; minus the naive bound of the residual when truncated.
    pub fn terminal_value(&self) -> i32 {
        match self.status() {
            Status::Solved => 0,
            _ => -(self.tensor.naive_completion_bound() as i32),
        }
    }

    /// Earliest move a Toffoli completed later may start at. A CS that ends
    /// at the protected prefix can still be absorbed.
    pub fn toffoli_window_start(&self) -> usize {
        match self.last_cs {
            Some(s) if self.protected_prefix == s + 3 => s,
            _ => self.protected_prefix,
        }
    }

    /// Plays `u`, returning the reward and any gadget completed by this move.
    pub fn step(&self, u: &BitVec, cfg: &GameConfig) -> Result<(GameState, i32)> {
        if self.is_terminal() {
            return Err(Error::TerminalState);
        }
        let mut next = self.clone();
        let (reward, _) = next.apply(u, cfg)?;
        Ok((next, reward))
    }

    /// Applies a move without checking for terminal status.
    pub(crate) fn apply(&mut self, u: &BitVec, cfg: &GameConfig) -> Result<(i32, Option<GadgetKind>)> {
        if u.is_zero() {
            return Err(Error::ZeroFactor);
        }
        if u.len() != self.n() {
            return Err(Error::DimensionMismatch(u.len(), self.n()));
        }
        self.tensor.xor_cube(u);
        if self.history.len() == HISTORY_LEN {
            self.history.remove(0);
        }
        self.history.push(*u);
        self.moves_played += 1;

        let mut reward = -1;
        let mut matched = None;
        if cfg.gadgets_enabled {
            let played = self.moves_played;
            if played >= 7 && is_toffoli(&self.history[self.history.len() - 7..]) {
                let start = played - 7;
                let absorbs_cs = self.last_cs == Some(start) && self.protected_prefix == start + 3;
                if start >= self.protected_prefix || absorbs_cs {
                    reward += cfg.toffoli_refund();
                    if absorbs_cs {
                        reward -= cfg.cs_refund();
                    }
                    self.protected_prefix = played;
                    self.last_cs = None;
                    matched = Some(GadgetKind::Toffoli);
                }
            }
            if matched.is_none()
                && played >= 3
                && played - 3 >= self.protected_prefix
                && is_cs(&self.history[self.history.len() - 3..])
            {
                reward += cfg.cs_refund();
                self.protected_prefix = played;
                self.last_cs = Some(played - 3);
                matched = Some(GadgetKind::Cs);
            }
        }
        self.t_cost -= reward;
        Ok((reward, matched))
    }
}

/// Gadget completed by the trailing factors of `history`, if any, given that
/// moves before `protected_prefix` are already consumed. `history` holds the
/// last `history.len()` moves of a game with `moves_played` moves.
pub fn match_gadget(history: &[BitVec], moves_played: usize, protected_prefix: usize) -> Option<(GadgetKind, usize)> {
    let len = history.len();
    if len >= 7 && moves_played >= 7 && moves_played - 7 >= protected_prefix && is_toffoli(&history[len - 7..]) {
        return Some((GadgetKind::Toffoli, moves_played - 7));
    }
    if len >= 3 && moves_played >= 3 && moves_played - 3 >= protected_prefix && is_cs(&history[len - 3..]) {
        return Some((GadgetKind::Cs, moves_played - 3));
    }
    None
}

/// u1, u2, u4 independent; u3 = u1+u2, u5 = u1+u4, u6 = u2+u4, u7 = u1+u2+u4.
fn is_toffoli(w: &[BitVec]) -> bool {
    let (a, b, c) = (w[0], w[1], w[3]);
    let independent = !a.is_zero()
        && !b.is_zero()
        && a != b
        && !c.is_zero()
        && c != a
        && c != b
        && c != a.xor(&b);
    independent
        && w[2] == a.xor(&b)
        && w[4] == a.xor(&c)
        && w[5] == b.xor(&c)
        && w[6] == a.xor(&b).xor(&c)
}

fn is_cs(w: &[BitVec]) -> bool {
    w[0] != w[1] && w[2] == w[0].xor(&w[1])
}

/// All nonzero factors on `n` qubits.
pub fn legal_actions(n: usize, cfg: &GameConfig) -> Result<Vec<BitVec>> {
    if n > cfg.action_enum_max_qubits {
        return Err(Error::TooManyActions { n, cap: cfg.action_enum_max_qubits });
    }
    Ok(all_nonzero(n).collect())
}

/// An ordered list of factors whose cubes XOR to a target tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Factorization {
    pub n: usize,
    pub factors: Vec<BitVec>,
    pub t_count: u32,
    pub gadget_spans: Vec<(usize, GadgetKind)>,
}

impl Factorization {
    pub fn new(n: usize, factors: Vec<BitVec>, cfg: &GameConfig) -> Result<Factorization> {
        let (t_count, gadget_spans) = replay(n, &factors, cfg)?;
        Ok(Factorization { n, factors, t_count, gadget_spans })
    }

    pub fn tensor(&self) -> Result<SymmetricTensor> {
        sum_of_cubes(&self.factors, self.n)
    }

    /// `N`, then one 0/1 string per factor (qubit 0 first), then the T-count.
    pub fn to_text(&self) -> String {
        let mut s = format!("{}\n", self.n);
        for f in &self.factors {
            s.push_str(&f.to_string());
            s.push('\n');
        }
        s.push_str(&format!("# t_count={}\n", self.t_count));
        s
    }

    /// Parses the factorization format and rescores it under `cfg`.
    pub fn from_text(text: &str, cfg: &GameConfig) -> Result<Factorization> {
        let mut n = None;
        let mut factors = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| Error::Parse { line: idx + 1, msg: msg.to_string() };
            match n {
                None => n = Some(line.parse::<usize>().map_err(|_| err("expected qubit count"))?),
                Some(n) => {
                    let f = BitVec::parse(line).ok_or_else(|| err("expected a 0/1 string"))?;
                    if f.len() != n {
                        return Err(err("factor length differs from qubit count"));
                    }
                    factors.push(f);
                }
            }
        }
        let n = n.ok_or(Error::Parse { line: 1, msg: "empty factorization file".into() })?;
        Factorization::new(n, factors, cfg)
    }
}

fn replay(n: usize, factors: &[BitVec], cfg: &GameConfig) -> Result<(u32, Vec<(usize, GadgetKind)>)> {
    let mut state = GameState::new(SymmetricTensor::try_zero(n)?, cfg);
    let mut spans = Vec::new();
    for (i, u) in factors.iter().enumerate() {
        let (_, matched) = state.apply(u, cfg)?;
        match matched {
            Some(GadgetKind::Toffoli) => {
                spans.retain(|&(s, k)| !(k == GadgetKind::Cs && s == i + 1 - 7));
                spans.push((i + 1 - 7, GadgetKind::Toffoli));
            }
            Some(GadgetKind::Cs) => spans.push((i + 1 - 3, GadgetKind::Cs)),
            None => {}
        }
    }
    Ok((state.t_cost as u32, spans))
}

/// T-count of playing `factors` in order, with gadget refunds when enabled.
pub fn score_factorization(factors: &[BitVec], cfg: &GameConfig) -> Result<u32> {
    let Some(first) = factors.first() else { return Ok(0) };
    Ok(replay(first.len(), factors, cfg)?.0)
}

/// The seven factors of a Toffoli pattern over generators `a`, `b`, `c`.
pub fn toffoli_pattern(a: BitVec, b: BitVec, c: BitVec) -> [BitVec; 7] {
    [a, b, a.xor(&b), c, a.xor(&c), b.xor(&c), a.xor(&b).xor(&c)]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(i: usize, n: usize) -> BitVec {
        BitVec::unit(i, n)
    }

    fn on() -> GameConfig {
        GameConfig::with_gadgets(true)
    }

    #[test]
    fn initial_states() {
        let cfg = GameConfig::default();
        let s = GameState::new(SymmetricTensor::zero(3), &cfg);
        assert_eq!(s.status(), Status::Solved);
        let s = GameState::new(SymmetricTensor::cube(&e(0, 3)).unwrap(), &cfg);
        assert_eq!(s.status(), Status::Ongoing);
        assert_eq!(s.max_moves, 2);
    }

    #[test]
    fn legal_action_counts() {
        let cfg = GameConfig::default();
        assert_eq!(legal_actions(3, &cfg).unwrap().len(), 7);
        assert_eq!(legal_actions(8, &cfg).unwrap().len(), 255);
        assert!(matches!(legal_actions(13, &cfg), Err(Error::TooManyActions { n: 13, cap: 12 })));
    }

    #[test]
    fn step_solves_rank_one() {
        let cfg = GameConfig::default();
        let s = GameState::new(SymmetricTensor::cube(&e(0, 3)).unwrap(), &cfg);
        let (t, r) = s.step(&e(0, 3), &cfg).unwrap();
        assert_eq!(r, -1);
        assert_eq!(t.t_cost, 1);
        assert_eq!(t.status(), Status::Solved);
        assert!(matches!(t.step(&e(1, 3), &cfg), Err(Error::TerminalState)));
        assert!(matches!(s.step(&BitVec::zero(3), &cfg), Err(Error::ZeroFactor)));
    }

    #[test]
    fn double_step_restores_tensor() {
        let cfg = GameConfig::default();
        let mut t = SymmetricTensor::cube(&e(0, 4)).unwrap();
        t.xor_cube(&BitVec::parse("1110").unwrap());
        let s = GameState::new(t.clone(), &cfg);
        let u = BitVec::parse("0111").unwrap();
        let (s1, _) = s.step(&u, &cfg).unwrap();
        let (s2, _) = s1.step(&u, &cfg).unwrap();
        assert_eq!(s2.tensor, t);
        assert_eq!(s2.t_cost, 2);
    }

    #[test]
    fn toffoli_pattern_costs_two() {
        let p = toffoli_pattern(e(0, 3), e(1, 3), e(2, 3));
        assert_eq!(score_factorization(&p, &on()).unwrap(), 2);
        assert_eq!(score_factorization(&p, &GameConfig::default()).unwrap(), 7);
        let f = Factorization::new(3, p.to_vec(), &on()).unwrap();
        assert_eq!(f.gadget_spans, vec![(0, GadgetKind::Toffoli)]);
    }

    #[test]
    fn interrupted_toffoli_costs_eight() {
        let p = toffoli_pattern(e(0, 4), e(1, 4), e(2, 4));
        let mut f = p.to_vec();
        f.insert(4, e(3, 4));
        assert_eq!(score_factorization(&f, &on()).unwrap(), 8);
    }

    #[test]
    fn cs_pattern_refund_depends_on_cost() {
        let f = [e(0, 2), e(1, 2), BitVec::parse("11").unwrap()];
        assert_eq!(score_factorization(&f, &on()).unwrap(), 3);
        let cheap = GameConfig { cs_cost: 2, ..on() };
        assert_eq!(score_factorization(&f, &cheap).unwrap(), 2);
    }

    #[test]
    fn toffoli_absorbs_leading_cs_match() {
        let cheap = GameConfig { cs_cost: 2, ..on() };
        let p = toffoli_pattern(e(0, 3), e(1, 3), e(2, 3));
        assert_eq!(score_factorization(&p, &cheap).unwrap(), 2);
        let f = Factorization::new(3, p.to_vec(), &cheap).unwrap();
        assert_eq!(f.gadget_spans, vec![(0, GadgetKind::Toffoli)]);
    }

    #[test]
    fn match_gadget_examples() {
        let n = 3;
        let cs = [e(0, n), e(1, n), e(0, n).xor(&e(1, n))];
        assert_eq!(match_gadget(&cs, 3, 0), Some((GadgetKind::Cs, 0)));
        let t = toffoli_pattern(e(0, n), e(1, n), e(2, n));
        assert_eq!(match_gadget(&t, 7, 0), Some((GadgetKind::Toffoli, 0)));
        assert_eq!(match_gadget(&[e(0, n), e(1, n), e(2, n)], 3, 0), None);
        assert_eq!(match_gadget(&cs, 3, 1), None);
    }

    #[test]
    fn terminal_values() {
        let cfg = GameConfig { max_moves_multiplier: 0.01, ..Default::default() };
        let mut s = GameState::new(SymmetricTensor::cube(&e(0, 3)).unwrap(), &cfg);
        assert_eq!(s.max_moves, 1);
        s.moves_played = 1;
        assert_eq!(s.status(), Status::Truncated);
        assert_eq!(s.terminal_value(), -1);
        let mut s = GameState::new(SymmetricTensor::cube(&BitVec::parse("110").unwrap()).unwrap(), &cfg);
        s.moves_played = s.max_moves;
        assert_eq!(s.terminal_value(), -5);
        let solved = GameState::new(SymmetricTensor::zero(2), &cfg);
        assert_eq!(solved.terminal_value(), 0);
    }

    #[test]
    fn factorization_text_round_trip() {
        let f = Factorization::new(3, toffoli_pattern(e(0, 3), e(1, 3), e(2, 3)).to_vec(), &on()).unwrap();
        let text = f.to_text();
        assert!(text.starts_with("3\n100\n010\n110\n"));
        assert!(text.ends_with("# t_count=2\n"));
        assert_eq!(Factorization::from_text(&text, &on()).unwrap(), f);
    }
}
