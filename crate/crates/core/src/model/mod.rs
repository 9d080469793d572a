//! Permutation-equivariant policy/value network.
//!
//! The tensor is read as an a×a grid of cells (i, j) over the a active
//! qubits, each cell carrying the fiber T[i,j,·] summarized against per-qubit
//! features. Blocks apply the same row attention along both grid axes, so a
//! block on a symmetric grid stays symmetric. There are no positional
//! encodings; relabeling qubits permutes the outputs and nothing else.

pub mod checkpoint;
mod input;
mod net;
pub mod ops;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::game::{GameConfig, GameState, HISTORY_LEN};
use crate::gf2::BitVec;
use crate::search::Evaluator;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use input::{NetInput, ACTION_FEATURES};
pub use net::{Gradients, NetOutput};

/// Values are predicted in units of this many T gates.
pub const VALUE_SCALE: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Symmetrize {
    Cyclic,
    Full,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub n_max: usize,
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub history_len: usize,
    pub symmetrize: Symmetrize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { n_max: 8, embed_dim: 64, layers: 3, heads: 4, history_len: 7, symmetrize: Symmetrize::Cyclic }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_max == 0 || self.n_max > 12 {
            return Err(Error::InvalidConfig(format!("n_max {} outside 1..=12", self.n_max)));
        }
        if self.embed_dim == 0 || self.heads == 0 || self.embed_dim % self.heads != 0 {
            return Err(Error::InvalidConfig("embed_dim must be a positive multiple of heads".into()));
        }
        if self.history_len == 0 {
            return Err(Error::InvalidConfig("history_len must be positive".into()));
        }
        Ok(())
    }

    /// Checks the model against the game it will play.
    pub fn check_game(&self, game: &GameConfig) -> Result<()> {
        if self.n_max > game.action_enum_max_qubits {
            return Err(Error::ConfigConflict(format!(
                "n_max {} exceeds the action enumeration cap {}",
                self.n_max, game.action_enum_max_qubits
            )));
        }
        if game.gadgets_enabled && self.history_len < HISTORY_LEN {
            return Err(Error::ConfigConflict(format!(
                "gadgets need history_len >= {HISTORY_LEN}, got {}",
                self.history_len
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    pub fn ffn_dim(&self) -> usize {
        2 * self.embed_dim
    }

    pub fn qubit_features(&self) -> usize {
        2 + self.history_len
    }

    pub fn cell_features(&self) -> usize {
        2 + 3 * self.qubit_features()
    }

    /// Version tag derived from the configuration.
    pub fn version(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        let hex: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
        format!("tfag1-{hex}")
    }
}

/// Offsets of every weight block inside the flat parameter vector.
#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub embed_w: usize,
    pub embed_b: usize,
    pub layers: Vec<LayerLayout>,
    pub lnf_g: usize,
    pub lnf_b: usize,
    pub val_w1: usize,
    pub val_b1: usize,
    pub val_w2: usize,
    pub val_b2: usize,
    pub pol_alpha: usize,
    pub pol_beta: usize,
    pub psi_wf: usize,
    pub psi_wg: usize,
    pub psi_b: usize,
    pub psi_out: usize,
    pub total: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct LayerLayout {
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub wq: usize,
    pub wk: usize,
    pub wv: usize,
    pub wo: usize,
    pub bo: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Layout {
        let d = cfg.embed_dim;
        let f = cfg.ffn_dim();
        let mut at = 0;
        let mut take = |len: usize| {
            let o = at;
            at += len;
            o
        };
        let embed_w = take(cfg.cell_features() * d);
        let embed_b = take(d);
        let layers = (0..cfg.layers)
            .map(|_| LayerLayout {
                ln1_g: take(d),
                ln1_b: take(d),
                wq: take(d * d),
                wk: take(d * d),
                wv: take(d * d),
                wo: take(d * d),
                bo: take(d),
                ln2_g: take(d),
                ln2_b: take(d),
                w1: take(d * f),
                b1: take(f),
                w2: take(f * d),
                b2: take(d),
            })
            .collect();
        let lnf_g = take(d);
        let lnf_b = take(d);
        let val_w1 = take(d * d);
        let val_b1 = take(d);
        let val_w2 = take(d);
        let val_b2 = take(1);
        let pol_alpha = take(d);
        let pol_beta = take(d);
        let psi_wf = take(ACTION_FEATURES * d);
        let psi_wg = take(d * d);
        let psi_b = take(d);
        let psi_out = take(d);
        Layout {
            embed_w,
            embed_b,
            layers,
            lnf_g,
            lnf_b,
            val_w1,
            val_b1,
            val_w2,
            val_b2,
            pol_alpha,
            pol_beta,
            psi_wf,
            psi_wg,
            psi_b,
            psi_out,
            total: at,
        }
    }
}

/// All trainable weights as one flat vector, tagged with the config version.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub version: String,
    pub values: Vec<f64>,
}

impl ModelParams {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// A configuration with its weights.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
    layout: Layout,
}

impl Model {
    /// Fresh weights with scaled normal initialization.
    pub fn init<R: Rng>(config: ModelConfig, rng: &mut R) -> Result<Model> {
        config.validate()?;
        let layout = Layout::new(&config);
        let d = config.embed_dim;
        let f = config.ffn_dim();
        let mut v = vec![0.0; layout.total];
        let mut fill = |v: &mut Vec<f64>, off: usize, len: usize, std: f64| {
            let normal = Normal::new(0.0, std).expect("positive std");
            for x in &mut v[off..off + len] {
                *x = normal.sample(rng);
            }
        };
        let sd = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();
        fill(&mut v, layout.embed_w, config.cell_features() * d, sd(config.cell_features()));
        for l in &layout.layers {
            v[l.ln1_g..l.ln1_g + d].fill(1.0);
            v[l.ln2_g..l.ln2_g + d].fill(1.0);
            fill(&mut v, l.wq, d * d, sd(d));
            fill(&mut v, l.wk, d * d, sd(d));
            fill(&mut v, l.wv, d * d, sd(d));
            fill(&mut v, l.wo, d * d, 0.5 * sd(d));
            fill(&mut v, l.w1, d * f, sd(d));
            fill(&mut v, l.w2, f * d, 0.5 * sd(f));
        }
        v[layout.lnf_g..layout.lnf_g + d].fill(1.0);
        fill(&mut v, layout.val_w1, d * d, sd(d));
        fill(&mut v, layout.val_w2, d, 0.1 * sd(d));
        fill(&mut v, layout.pol_alpha, d, 0.1 * sd(d));
        fill(&mut v, layout.pol_beta, d, 0.1 * sd(d));
        fill(&mut v, layout.psi_wf, ACTION_FEATURES * d, sd(ACTION_FEATURES));
        fill(&mut v, layout.psi_wg, d * d, sd(d));
        fill(&mut v, layout.psi_out, d, 0.1 * sd(d));
        let params = ModelParams { version: config.version(), values: v };
        Ok(Model { config, params, layout })
    }

    pub fn from_parts(config: ModelConfig, params: ModelParams) -> Result<Model> {
        config.validate()?;
        let expected = config.version();
        if params.version != expected {
            return Err(Error::VersionMismatch { found: params.version, expected });
        }
        let layout = Layout::new(&config);
        if params.values.len() != layout.total {
            return Err(Error::ShapeMismatch(format!(
                "{} weights for a layout of {}",
                params.values.len(),
                layout.total
            )));
        }
        Ok(Model { config, params, layout })
    }

    pub fn num_params(&self) -> usize {
        self.layout.total
    }

    /// Policy logits over all nonzero n_max-bit actions (index = mask − 1)
    /// and the predicted sum of future rewards.
    pub fn forward(&self, input: &NetInput) -> Result<(Vec<f64>, f64)> {
        let out = self.forward_full(input)?;
        Ok((out.global_logits(self.config.n_max), out.value))
    }

    pub(crate) fn forward_full(&self, input: &NetInput) -> Result<NetOutput> {
        input.check(&self.config)?;
        Ok(net::forward(self, input))
    }

    pub(crate) fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Gradient of `policy_weight · CE(target) + value_weight · (value − target)²`
    /// for one sample, accumulated into `grads`. Returns the two loss terms.
    pub fn accumulate_gradient(
        &self,
        input: &NetInput,
        policy_target: &[(u32, f64)],
        value_target: f64,
        value_weight: f64,
        scale: f64,
        grads: &mut Gradients,
    ) -> Result<(f64, f64)> {
        input.check(&self.config)?;
        net::loss_and_backward(self, input, policy_target, value_target, value_weight, scale, grads)
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients { values: vec![0.0; self.layout.total] }
    }
}

/// Tree-search evaluator backed by a network snapshot.
pub struct NetworkEvaluator<'a> {
    pub model: &'a Model,
    pub game: GameConfig,
}

impl Evaluator for NetworkEvaluator<'_> {
    fn evaluate(&self, state: &GameState, actions: &[BitVec]) -> (Vec<f64>, f64) {
        let input = match NetInput::from_state(state, &self.game, &self.model.config) {
            Ok(i) => i,
            Err(_) => return crate::search::UniformEvaluator.evaluate(state, actions),
        };
        let out = net::forward(self.model, &input);
        let mut logits: Vec<f64> = actions.iter().map(|u| out.logit_for_global(u.bits())).collect();
        ops::softmax_in_place(&mut logits);
        (logits, out.value)
    }
}
