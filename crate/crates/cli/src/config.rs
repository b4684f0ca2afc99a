//! Experiment configuration: one strict JSON document.

use std::path::{Path, PathBuf};

use elastonet_core::pinn::{LossWeights, ProblemSpec};
use elastonet_core::MlpConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub problem: ProblemBlock,
    pub discretization: DiscretizationBlock,
    pub networks: NetworksBlock,
    pub training: TrainingBlock,
    pub evaluation: EvaluationBlock,
    pub paths: PathsBlock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemBlock {
    /// Traction applied on the right edge.
    pub load: f64,
    pub modulus: ModulusSpec,
}

/// `"reference"`, `{"constant": 0.3}` or `{"expression": "0.3 + 0.1*X1"}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModulusSpec {
    Reference,
    Constant(f64),
    Expression(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscretizationBlock {
    pub interior_per_side: usize,
    pub points_per_edge: usize,
    pub measurement_per_side: usize,
    /// Elements per side of the data-generation mesh.
    pub fem_elements: usize,
    pub fem_load_steps: usize,
    pub fem_max_halvings: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkBlock {
    pub hidden_layers: usize,
    pub hidden_width: usize,
    /// The fixed scale `n` of the adaptive activation.
    pub activation_scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworksBlock {
    pub displacement: NetworkBlock,
    pub modulus: NetworkBlock,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Identify the modulus from displacement data.
    Inverse,
    /// Solve for the displacement with the modulus frozen; no data term.
    Forward,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightsBlock {
    pub w_u: f64,
    pub w_f: f64,
    pub w_d: f64,
    pub w_t: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingBlock {
    pub mode: Mode,
    pub learning_rate: f64,
    pub epochs: u64,
    pub weights: WeightsBlock,
    pub seed: u64,
    pub history_every: u64,
    pub checkpoint_every: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationBlock {
    /// Grid nodes per side of the field CSV.
    pub grid_per_side: usize,
    /// Closed X1 and X2 ranges of the grid; a single node sits at the lower end.
    pub x1_range: [f64; 2],
    pub x2_range: [f64; 2],
    /// Points whose errors are reported individually.
    pub probes: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsBlock {
    /// Measurement CSV; defaults to `measurements.csv` in the output directory.
    pub data: Option<PathBuf>,
    pub output: PathBuf,
}

impl Default for ProblemBlock {
    fn default() -> Self {
        ProblemBlock {
            load: 0.3,
            modulus: ModulusSpec::Reference,
        }
    }
}

impl Default for DiscretizationBlock {
    fn default() -> Self {
        DiscretizationBlock {
            interior_per_side: 41,
            points_per_edge: 40,
            measurement_per_side: 21,
            fem_elements: 40,
            fem_load_steps: 10,
            fem_max_halvings: 4,
        }
    }
}

impl Default for NetworkBlock {
    fn default() -> Self {
        NetworkBlock {
            hidden_layers: 4,
            hidden_width: 30,
            activation_scale: 1.0,
        }
    }
}

impl Default for NetworksBlock {
    fn default() -> Self {
        NetworksBlock {
            displacement: NetworkBlock::default(),
            modulus: NetworkBlock::default(),
        }
    }
}

impl Default for WeightsBlock {
    fn default() -> Self {
        let w = LossWeights::default();
        WeightsBlock {
            w_u: w.w_u,
            w_f: w.w_f,
            w_d: w.w_d,
            w_t: w.w_t,
        }
    }
}

impl Default for TrainingBlock {
    fn default() -> Self {
        TrainingBlock {
            mode: Mode::Inverse,
            learning_rate: 1e-3,
            epochs: Profile::Paper.epochs(),
            weights: WeightsBlock::default(),
            seed: 0,
            history_every: 1000,
            checkpoint_every: 100_000,
        }
    }
}

impl Default for EvaluationBlock {
    fn default() -> Self {
        EvaluationBlock {
            grid_per_side: 101,
            x1_range: [0.0, 1.0],
            x2_range: [0.0, 1.0],
            probes: vec![[0.1, 0.2]],
        }
    }
}

impl Default for PathsBlock {
    fn default() -> Self {
        PathsBlock {
            data: None,
            output: PathBuf::from("out"),
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            problem: ProblemBlock::default(),
            discretization: DiscretizationBlock::default(),
            networks: NetworksBlock::default(),
            training: TrainingBlock::default(),
            evaluation: EvaluationBlock::default(),
            paths: PathsBlock::default(),
        }
    }
}

/// Epoch budgets selectable with `--profile`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    Paper,
    Reduced,
}

impl Profile {
    pub fn epochs(self) -> u64 {
        match self {
            Profile::Paper => 2_000_000,
            Profile::Reduced => 200_000,
        }
    }
}

fn inside(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl NetworkBlock {
    fn mlp(&self, output_width: usize) -> MlpConfig {
        MlpConfig {
            input_width: 2,
            hidden_layers: self.hidden_layers,
            hidden_width: self.hidden_width,
            output_width,
            activation_scale: self.activation_scale,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| bad(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let p = &self.problem;
        if !(p.load >= 0.0 && p.load.is_finite()) {
            return Err(bad("problem.load must be finite and non-negative"));
        }
        crate::modulus::build(&p.modulus)?;
        let d = &self.discretization;
        if d.interior_per_side < 2 || d.points_per_edge < 2 || d.measurement_per_side < 2 {
            return Err(bad("point counts must be at least 2 per side"));
        }
        if d.fem_elements == 0 || d.fem_load_steps == 0 {
            return Err(bad("FEM mesh size and load steps must be positive"));
        }
        self.u_config().validate().map_err(|e| bad(format!("networks.displacement: {e}")))?;
        self.mu_config().validate().map_err(|e| bad(format!("networks.modulus: {e}")))?;
        let t = &self.training;
        if !(t.learning_rate > 0.0 && t.learning_rate.is_finite()) {
            return Err(bad("training.learning_rate must be positive"));
        }
        if t.history_every == 0 {
            return Err(bad("training.history_every must be positive"));
        }
        self.weights().validate().map_err(|e| bad(e.to_string()))?;
        let e = &self.evaluation;
        if e.grid_per_side == 0 {
            return Err(bad("evaluation.grid_per_side must be positive"));
        }
        for r in [e.x1_range, e.x2_range] {
            if !(inside(r[0]) && inside(r[1]) && r[0] <= r[1]) {
                return Err(bad("evaluation grid must lie inside the unit square"));
            }
        }
        if e.probes.iter().flatten().any(|v| !inside(*v)) {
            return Err(bad("evaluation probes must lie inside the unit square"));
        }
        Ok(())
    }

    pub fn u_config(&self) -> MlpConfig {
        self.networks.displacement.mlp(3)
    }

    pub fn mu_config(&self) -> MlpConfig {
        self.networks.modulus.mlp(1)
    }

    /// Loss weights; forward mode drops the data term.
    pub fn weights(&self) -> LossWeights {
        let w = &self.training.weights;
        LossWeights {
            w_u: if self.training.mode == Mode::Forward { 0.0 } else { w.w_u },
            w_f: w.w_f,
            w_d: w.w_d,
            w_t: w.w_t,
        }
    }

    pub fn problem_spec(&self) -> ProblemSpec {
        let d = &self.discretization;
        ProblemSpec {
            interior_per_side: d.interior_per_side,
            points_per_edge: d.points_per_edge,
            measurement_per_side: d.measurement_per_side,
            ..ProblemSpec::tension(self.problem.load)
        }
    }

    pub fn data_path(&self, out: &Path) -> PathBuf {
        self.paths.data.clone().unwrap_or_else(|| out.join(crate::io::MEASUREMENTS))
    }
}
