//! PUCT Monte Carlo tree search over game states.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{legal_actions, Factorization, GameConfig, GameState, Status};
use crate::gf2::{BitVec, SymmetricTensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub simulations: usize,
    pub c_puct: f64,
    pub dirichlet_alpha: f64,
    pub dirichlet_fraction: f64,
    /// Moves sampled at temperature 1 in training mode before switching to argmax.
    pub temperature_moves: usize,
    pub discount: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            simulations: 80,
            c_puct: 1.25,
            dirichlet_alpha: 0.3,
            dirichlet_fraction: 0.25,
            temperature_moves: 4,
            discount: 1.0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.simulations == 0 {
            return Err(Error::InvalidConfig("simulations must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.dirichlet_fraction) || !(0.0..=1.0).contains(&self.discount) {
            return Err(Error::InvalidConfig("fractions must lie in [0, 1]".into()));
        }
        if self.dirichlet_alpha <= 0.0 || self.c_puct < 0.0 {
            return Err(Error::InvalidConfig("dirichlet_alpha must be positive, c_puct non-negative".into()));
        }
        Ok(())
    }
}

/// Prior and value source for tree search. Implementations must be callable
/// from several episode workers at once.
pub trait Evaluator: Sync {
    /// Prior over `actions` (same order, summing to 1) and the expected sum of
    /// future rewards from `state`.
    fn evaluate(&self, state: &GameState, actions: &[BitVec]) -> (Vec<f64>, f64);
}

/// Uniform prior. The value is minus the flattening rank, a lower bound on
/// the remaining cost; the optimism keeps an uninformed search broad instead
/// of locking onto the first children it happens to visit.
#[derive(Clone, Copy, Debug, Default)]
pub struct UniformEvaluator;

impl Evaluator for UniformEvaluator {
    fn evaluate(&self, state: &GameState, actions: &[BitVec]) -> (Vec<f64>, f64) {
        let p = 1.0 / actions.len().max(1) as f64;
        (vec![p; actions.len()], -(state.tensor.flattening_rank() as f64))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Visit statistics at the root after a search.
#[derive(Clone, Debug)]
pub struct SearchResult {
    pub actions: Vec<BitVec>,
    pub visits: Vec<u32>,
    /// Normalized visit counts.
    pub policy: Vec<f64>,
    pub root_value: f64,
}

const NO_CHILD: u32 = u32::MAX;

struct Node {
    state: GameState,
    expanded: bool,
    prior: Vec<f64>,
    children: Vec<u32>,
    rewards: Vec<f64>,
    edge_visits: Vec<u32>,
    edge_value: Vec<f64>,
    visits: u32,
    value_sum: f64,
}

impl Node {
    fn new(state: GameState) -> Node {
        Node {
            state,
            expanded: false,
            prior: Vec::new(),
            children: Vec::new(),
            rewards: Vec::new(),
            edge_visits: Vec::new(),
            edge_value: Vec::new(),
            visits: 0,
            value_sum: 0.0,
        }
    }

    fn mean_value(&self) -> f64 {
        if self.visits == 0 {
            0.0
        } else {
            self.value_sum / self.visits as f64
        }
    }
}

#[derive(Default)]
struct MinMax {
    lo: f64,
    hi: f64,
    seen: bool,
}

impl MinMax {
    fn update(&mut self, v: f64) {
        if !self.seen {
            self.lo = v;
            self.hi = v;
            self.seen = true;
        } else {
            self.lo = self.lo.min(v);
            self.hi = self.hi.max(v);
        }
    }

    fn normalize(&self, v: f64) -> f64 {
        if self.seen && self.hi > self.lo {
            (v - self.lo) / (self.hi - self.lo)
        } else {
            0.5
        }
    }
}

struct Tree<'a> {
    nodes: Vec<Node>,
    actions: Vec<BitVec>,
    game: &'a GameConfig,
    cfg: &'a SearchConfig,
    bounds: MinMax,
}

impl Tree<'_> {
    fn expand<E: Evaluator + ?Sized>(&mut self, id: usize, evaluator: &E) -> f64 {
        let (prior, value) = evaluator.evaluate(&self.nodes[id].state, &self.actions);
        let k = self.actions.len();
        debug_assert_eq!(prior.len(), k);
        let node = &mut self.nodes[id];
        node.prior = prior;
        node.children = vec![NO_CHILD; k];
        node.rewards = vec![0.0; k];
        node.edge_visits = vec![0; k];
        node.edge_value = vec![0.0; k];
        node.expanded = true;
        value
    }

    /// PUCT over min-max normalized Q; unvisited edges take the node's mean
    /// value. Ties go to the lowest action index.
    fn select(&self, id: usize) -> usize {
        let node = &self.nodes[id];
        let total: u32 = node.edge_visits.iter().sum();
        let sqrt_total = (total.max(1) as f64).sqrt();
        let fpu = self.bounds.normalize(node.mean_value());
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for a in 0..node.prior.len() {
            let n = node.edge_visits[a];
            let q = if n == 0 { fpu } else { self.bounds.normalize(node.edge_value[a] / n as f64) };
            let score = q + self.cfg.c_puct * node.prior[a] * sqrt_total / (1.0 + n as f64);
            if score > best_score {
                best_score = score;
                best = a;
            }
        }
        best
    }

    fn simulate<E: Evaluator + ?Sized>(&mut self, evaluator: &E) -> Result<()> {
        let mut path: Vec<(usize, usize)> = Vec::new();
        let mut id = 0;
        let leaf_value = loop {
            let node = &self.nodes[id];
            if node.state.is_terminal() {
                break node.state.terminal_value() as f64;
            }
            if !node.expanded {
                break self.expand(id, evaluator);
            }
            let a = self.select(id);
            if self.nodes[id].children[a] == NO_CHILD {
                let (child, reward) = self.nodes[id].state.step(&self.actions[a], self.game)?;
                let child_id = self.nodes.len() as u32;
                self.nodes.push(Node::new(child));
                self.nodes[id].children[a] = child_id;
                self.nodes[id].rewards[a] = reward as f64;
            }
            path.push((id, a));
            id = self.nodes[id].children[a] as usize;
        };
        let leaf = &mut self.nodes[id];
        leaf.visits += 1;
        leaf.value_sum += leaf_value;
        self.bounds.update(leaf_value);
        let mut ret = leaf_value;
        for &(pid, a) in path.iter().rev() {
            let node = &mut self.nodes[pid];
            ret = node.rewards[a] + self.cfg.discount * ret;
            node.edge_visits[a] += 1;
            node.edge_value[a] += ret;
            node.visits += 1;
            node.value_sum += ret;
            let q = node.edge_value[a] / node.edge_visits[a] as f64;
            self.bounds.update(q);
            self.bounds.update(ret);
        }
        Ok(())
    }
}

/// Runs `cfg.simulations` PUCT simulations from `state`. With `noise`, the
/// root prior is mixed with Dirichlet noise.
pub fn mcts_policy<E: Evaluator + ?Sized, R: Rng>(
    state: &GameState,
    evaluator: &E,
    game: &GameConfig,
    cfg: &SearchConfig,
    noise: bool,
    rng: &mut R,
) -> Result<SearchResult> {
    if state.is_terminal() {
        return Err(Error::TerminalState);
    }
    let actions = legal_actions(state.n(), game)?;
    let mut tree = Tree { nodes: vec![Node::new(state.clone())], actions, game, cfg, bounds: MinMax::default() };
    let root_value = tree.expand(0, evaluator);
    tree.nodes[0].visits = 1;
    tree.nodes[0].value_sum = root_value;
    tree.bounds.update(root_value);
    if noise && cfg.dirichlet_fraction > 0.0 {
        let gamma = Gamma::new(cfg.dirichlet_alpha, 1.0)
            .map_err(|e| Error::InvalidConfig(format!("dirichlet_alpha: {e}")))?;
        let draws: Vec<f64> = (0..tree.actions.len()).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 {
            let f = cfg.dirichlet_fraction;
            for (p, d) in tree.nodes[0].prior.iter_mut().zip(&draws) {
                *p = (1.0 - f) * *p + f * d / total;
            }
        }
    }
    for _ in 0..cfg.simulations {
        tree.simulate(evaluator)?;
    }
    let root = &tree.nodes[0];
    let visits = root.edge_visits.clone();
    let total: u32 = visits.iter().sum();
    let policy = visits.iter().map(|&v| v as f64 / total as f64).collect();
    let root_value = root.edge_value.iter().sum::<f64>() / total as f64;
    Ok(SearchResult { actions: tree.actions, visits, policy, root_value })
}

/// Index of the chosen action: argmax (lowest index on ties) at temperature
/// 0, otherwise a sample proportional to `policy^(1/temperature)`.
pub fn select_action<R: Rng>(policy: &[f64], temperature: f64, rng: &mut R) -> Result<usize> {
    if policy.is_empty() {
        return Err(Error::EmptyPolicy);
    }
    if temperature <= 0.0 {
        let mut best = 0;
        for (i, &p) in policy.iter().enumerate() {
            if p > policy[best] {
                best = i;
            }
        }
        return Ok(best);
    }
    let weights: Vec<f64> = policy.iter().map(|&p| p.max(0.0).powf(1.0 / temperature)).collect();
    let total: f64 = weights.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::EmptyPolicy);
    }
    let mut x = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return Ok(i);
        }
        x -= w;
    }
    Ok(weights.iter().rposition(|&w| w > 0.0).unwrap_or(0))
}

/// One position of a played episode with its search targets.
#[derive(Clone, Debug)]
pub struct TrajectoryStep {
    pub state: GameState,
    pub actions: Vec<BitVec>,
    pub policy: Vec<f64>,
    /// Sum of the rewards from this position on, plus the terminal value.
    pub ret: f64,
}

#[derive(Clone, Debug)]
pub struct Episode {
    /// Moves played, completed with the residual's monomial factorization when
    /// the episode was truncated, so the factors always reconstruct the input.
    pub factorization: Factorization,
    pub moves: Vec<BitVec>,
    pub status: Status,
    pub trajectory: Vec<TrajectoryStep>,
}

/// Plays one game to the end. Training mode adds root noise and samples at
/// temperature 1 for the first `temperature_moves` moves; evaluation mode
/// always takes the most visited action.
pub fn play_episode<E: Evaluator + ?Sized, R: Rng>(
    tensor: &SymmetricTensor,
    evaluator: &E,
    game: &GameConfig,
    cfg: &SearchConfig,
    mode: Mode,
    rng: &mut R,
) -> Result<Episode> {
    let mut state = GameState::new(tensor.clone(), game);
    let mut moves = Vec::new();
    let mut steps: Vec<(TrajectoryStep, f64)> = Vec::new();
    while !state.is_terminal() {
        let train = mode == Mode::Train;
        let result = mcts_policy(&state, evaluator, game, cfg, train, rng)?;
        let temperature = if train && moves.len() < cfg.temperature_moves { 1.0 } else { 0.0 };
        let a = select_action(&result.policy, temperature, rng)?;
        let u = result.actions[a];
        let (next, reward) = state.step(&u, game)?;
        steps.push((
            TrajectoryStep { state, actions: result.actions, policy: result.policy, ret: 0.0 },
            reward as f64,
        ));
        moves.push(u);
        state = next;
    }
    let status = state.status();
    let mut ret = state.terminal_value() as f64;
    for (step, reward) in steps.iter_mut().rev() {
        ret = *reward + cfg.discount * ret;
        step.ret = ret;
    }
    let mut factors = moves.clone();
    if status == Status::Truncated {
        factors.extend(state.tensor.monomial_factorization());
    }
    let factorization = Factorization::new(tensor.n(), factors, game)?;
    Ok(Episode { factorization, moves, status, trajectory: steps.into_iter().map(|(s, _)| s).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bv(s: &str) -> BitVec {
        BitVec::parse(s).unwrap()
    }

    #[test]
    fn rank_one_concentrates_on_solution() {
        let game = GameConfig::default();
        let cfg = SearchConfig::default();
        let state = GameState::new(SymmetricTensor::cube(&bv("100")).unwrap(), &game);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = mcts_policy(&state, &UniformEvaluator, &game, &cfg, false, &mut rng).unwrap();
        assert_eq!(r.visits.iter().sum::<u32>(), 80);
        let best = select_action(&r.policy, 0.0, &mut rng).unwrap();
        assert_eq!(r.actions[best], bv("100"));
        assert!(r.policy[best] > 0.5);
    }

    #[test]
    fn single_simulation_is_one_hot_on_first_action() {
        let game = GameConfig::default();
        let cfg = SearchConfig { simulations: 1, ..Default::default() };
        let mut t = SymmetricTensor::cube(&bv("110")).unwrap();
        t.xor_cube(&bv("011"));
        let state = GameState::new(t, &game);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = mcts_policy(&state, &UniformEvaluator, &game, &cfg, false, &mut rng).unwrap();
        assert_eq!(r.visits[0], 1);
        assert_eq!(r.visits.iter().sum::<u32>(), 1);
    }

    #[test]
    fn terminal_state_is_rejected() {
        let game = GameConfig::default();
        let state = GameState::new(SymmetricTensor::zero(3), &game);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = mcts_policy(&state, &UniformEvaluator, &game, &SearchConfig::default(), false, &mut rng);
        assert!(matches!(r, Err(Error::TerminalState)));
    }

    #[test]
    fn select_action_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(select_action(&[0.0, 1.0, 0.0], 0.0, &mut rng).unwrap(), 1);
        assert_eq!(select_action(&[0.5, 0.5], 0.0, &mut rng).unwrap(), 0);
        assert!(matches!(select_action(&[], 0.0, &mut rng), Err(Error::EmptyPolicy)));
        let draws = 10_000;
        let zeros = (0..draws).filter(|_| select_action(&[0.75, 0.25], 1.0, &mut rng).unwrap() == 0).count();
        let p = zeros as f64 / draws as f64;
        // 4.5 standard errors of a Bernoulli(0.75) mean over 10^4 draws.
        assert!((p - 0.75).abs() < 4.5 * (0.75f64 * 0.25 / draws as f64).sqrt(), "p = {p}");
    }

    #[test]
    fn episode_examples() {
        let game = GameConfig::default();
        let cfg = SearchConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ep = play_episode(&SymmetricTensor::zero(3), &UniformEvaluator, &game, &cfg, Mode::Eval, &mut rng).unwrap();
        assert!(ep.factorization.factors.is_empty());
        assert_eq!(ep.factorization.t_count, 0);
        let t = SymmetricTensor::cube(&bv("100")).unwrap();
        let ep = play_episode(&t, &UniformEvaluator, &game, &cfg, Mode::Eval, &mut rng).unwrap();
        assert_eq!(ep.factorization.factors, vec![bv("100")]);
        assert_eq!(ep.factorization.t_count, 1);
        assert_eq!(ep.trajectory[0].ret, -1.0);
    }

    #[test]
    fn forced_truncation_applies_penalty() {
        // Rank-2 tensor with naive bound 2 and a one-move budget.
        let game = GameConfig { max_moves_multiplier: 0.5, ..Default::default() };
        let cfg = SearchConfig { simulations: 1, ..Default::default() };
        let mut t = SymmetricTensor::cube(&bv("100")).unwrap();
        t.xor_cube(&bv("010"));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ep = play_episode(&t, &UniformEvaluator, &game, &cfg, Mode::Eval, &mut rng).unwrap();
        assert_eq!(ep.status, Status::Truncated);
        assert_eq!(ep.moves.len(), 1);
        let residual = ep.trajectory[0].state.tensor.xor(&SymmetricTensor::cube(&ep.moves[0]).unwrap()).unwrap();
        assert_eq!(ep.trajectory[0].ret, -1.0 - residual.naive_completion_bound() as f64);
        assert_eq!(ep.factorization.tensor().unwrap(), t);
    }
}
