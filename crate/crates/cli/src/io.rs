//! File formats: measurement, history and field CSVs, JSON checkpoints.

use std::fmt::Write as _;
use std::path::Path;

use elastonet_core::pinn::{AdamState, HistoryRecord, LossBreakdown, TrainState, TrainingHistory};
use elastonet_core::{MlpConfig, NetworkParams, Point2};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const MEASUREMENTS: &str = "measurements.csv";
pub const HISTORY: &str = "loss_history.csv";
pub const FIELD: &str = "mu_field.csv";
pub const METRICS: &str = "metrics.json";
pub const MANIFEST: &str = "manifest.json";
pub const CONFIG_ECHO: &str = "config.json";
pub const FINAL_CHECKPOINT: &str = "checkpoint_final.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";

/// Seventeen significant digits: enough to round-trip any double.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    write_file(path, &s)
}

pub fn measurements_csv(records: &[(Point2, [f64; 2])]) -> String {
    let mut s = String::from("X1,X2,u1,u2\n");
    for (x, u) in records {
        let _ = writeln!(s, "{},{},{},{}", num(x.x1), num(x.x2), num(u[0]), num(u[1]));
    }
    s
}

pub fn read_measurements(path: &Path) -> Result<Vec<(Point2, [f64; 2])>, CliError> {
    let bad = |m: String| CliError::Config(format!("{}: {m}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?;
    if header.iter().collect::<Vec<_>>() != ["X1", "X2", "u1", "u2"] {
        return Err(bad("header must be X1,X2,u1,u2".into()));
    }
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let mut v = [0.0; 4];
        for (k, field) in rec.iter().enumerate() {
            v[k] = field
                .trim()
                .parse()
                .map_err(|_| bad(format!("row {}: {field:?} is not a number", row + 1)))?;
        }
        out.push((Point2::new(v[0], v[1]), [v[2], v[3]]));
    }
    Ok(out)
}

pub fn history_csv(history: &[HistoryRecord]) -> String {
    let mut s = String::from("epoch");
    for name in LossBreakdown::TERM_NAMES {
        s.push(',');
        s.push_str(name);
    }
    s.push_str(",total,relative_l2,max_abs\n");
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    for r in history {
        s.push_str(&r.epoch.to_string());
        for t in r.loss.terms() {
            s.push(',');
            s.push_str(&num(t));
        }
        let _ = writeln!(s, ",{},{},{}", num(r.loss.total()), opt(r.relative_l2), opt(r.max_abs));
    }
    s
}

/// `X1,X2,mu_true,mu_pred,signed_error` rows.
pub fn field_csv(points: &[Point2], truth: &[f64], pred: &[f64]) -> String {
    let mut s = String::from("X1,X2,mu_true,mu_pred,signed_error\n");
    for ((x, t), p) in points.iter().zip(truth).zip(pred) {
        let _ = writeln!(s, "{},{},{},{},{}", num(x.x1), num(x.x2), num(*t), num(*p), num(p - t));
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetFile {
    input_width: usize,
    hidden_layers: usize,
    hidden_width: usize,
    output_width: usize,
    activation_scale: f64,
    values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdamFile {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordFile {
    epoch: u64,
    terms: [f64; 5],
    relative_l2: Option<f64>,
    max_abs: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    epoch: u64,
    displacement: NetFile,
    modulus: NetFile,
    adam_displacement: AdamFile,
    adam_modulus: AdamFile,
    history: Vec<RecordFile>,
}

fn net_file(p: &NetworkParams) -> NetFile {
    let c = p.config();
    NetFile {
        input_width: c.input_width,
        hidden_layers: c.hidden_layers,
        hidden_width: c.hidden_width,
        output_width: c.output_width,
        activation_scale: c.activation_scale,
        values: p.values().to_vec(),
    }
}

fn net_from(f: NetFile) -> Result<NetworkParams, CliError> {
    let config = MlpConfig {
        input_width: f.input_width,
        hidden_layers: f.hidden_layers,
        hidden_width: f.hidden_width,
        output_width: f.output_width,
        activation_scale: f.activation_scale,
    };
    NetworkParams::from_values(config, f.values).map_err(|e| CliError::Config(format!("checkpoint: {e}")))
}

fn adam_file(a: &AdamState) -> AdamFile {
    AdamFile {
        lr: a.lr,
        beta1: a.beta1,
        beta2: a.beta2,
        eps: a.eps,
        t: a.t,
        m: a.m.clone(),
        v: a.v.clone(),
    }
}

fn adam_from(f: AdamFile) -> Result<AdamState, CliError> {
    let a = AdamState {
        lr: f.lr,
        beta1: f.beta1,
        beta2: f.beta2,
        eps: f.eps,
        t: f.t,
        m: f.m,
        v: f.v,
    };
    a.validate().map_err(|e| CliError::Config(format!("checkpoint: {e}")))?;
    Ok(a)
}

/// A training state together with the history that led to it.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub state: TrainState,
    pub history: TrainingHistory,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        let s = &self.state;
        let file = CheckpointFile {
            epoch: s.epoch,
            displacement: net_file(&s.u),
            modulus: net_file(&s.mu),
            adam_displacement: adam_file(&s.adam_u),
            adam_modulus: adam_file(&s.adam_mu),
            history: self
                .history
                .iter()
                .map(|r| RecordFile {
                    epoch: r.epoch,
                    terms: r.loss.terms(),
                    relative_l2: r.relative_l2,
                    max_abs: r.max_abs,
                })
                .collect(),
        };
        let mut s = serde_json::to_string(&file).expect("finite checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let f: CheckpointFile =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("checkpoint: {e}")))?;
        let (u, mu) = (net_from(f.displacement)?, net_from(f.modulus)?);
        let (adam_u, adam_mu) = (adam_from(f.adam_displacement)?, adam_from(f.adam_modulus)?);
        if adam_u.m.len() != u.len() || adam_mu.m.len() != mu.len() {
            return Err(CliError::Config("checkpoint: optimizer and network sizes differ".into()));
        }
        let history = f
            .history
            .into_iter()
            .map(|r| {
                let [data, pde, incompressibility, dirichlet, neumann] = r.terms;
                HistoryRecord {
                    epoch: r.epoch,
                    loss: LossBreakdown {
                        data,
                        pde,
                        incompressibility,
                        dirichlet,
                        neumann,
                    },
                    relative_l2: r.relative_l2,
                    max_abs: r.max_abs,
                }
            })
            .collect();
        Ok(Checkpoint {
            state: TrainState {
                epoch: f.epoch,
                u,
                mu,
                adam_u,
                adam_mu,
            },
            history,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

pub fn checkpoint_name(epoch: u64) -> String {
    format!("epoch_{epoch:09}.json")
}

#[cfg(test)]
mod tests {
    use super::*;
    use elastonet_core::pinn::square_grid;

    fn sample_state(seed: u64) -> TrainState {
        let small = MlpConfig {
            hidden_layers: 2,
            hidden_width: 5,
            ..MlpConfig::displacement()
        };
        let u = NetworkParams::init_xavier(small, seed).unwrap();
        let mu = NetworkParams::init_xavier(MlpConfig { output_width: 1, ..small }, seed + 1).unwrap();
        let mut st = TrainState::fresh(u, mu, 1e-3);
        // Awkward values: subnormals, long mantissas, signed zero.
        st.adam_u.m[0] = 5e-324;
        st.adam_u.m[1] = 0.1 + 0.2;
        st.adam_u.m[2] = -0.0;
        st.adam_u.v[3] = 1.0 / 3.0;
        st.adam_u.t = 123_456;
        st.epoch = 123_456;
        st
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let st = sample_state(5);
        let history = vec![HistoryRecord {
            epoch: 1000,
            loss: LossBreakdown {
                data: 1.0 / 7.0,
                pde: 2e-300,
                incompressibility: 0.0,
                dirichlet: 3.3,
                neumann: std::f64::consts::PI,
            },
            relative_l2: Some(0.123456789012345678),
            max_abs: None,
        }];
        let ck = Checkpoint { state: st, history };
        let text = ck.to_json();
        let back = Checkpoint::from_json(&text).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.state.adam_u.m[2].to_bits(), (-0.0f64).to_bits());
        for (a, b) in back.state.u.values().iter().zip(ck.state.u.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn corrupt_checkpoints_are_config_errors() {
        let text = Checkpoint { state: sample_state(1), history: vec![] }.to_json();
        assert!(Checkpoint::from_json(&text.replace("\"epoch\"", "\"epoch_\"")).is_err());
        assert!(Checkpoint::from_json(&text[..text.len() / 2]).is_err());
        let mut st = sample_state(1);
        st.adam_mu.m.pop();
        st.adam_mu.v.pop();
        let text = Checkpoint { state: st, history: vec![] }.to_json();
        assert!(matches!(Checkpoint::from_json(&text), Err(CliError::Config(_))));
    }

    #[test]
    fn measurements_round_trip_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(MEASUREMENTS);
        let recs: Vec<_> = square_grid(5)
            .into_iter()
            .map(|x| (x, [x.x1 / 3.0 + 1e-17, -x.x2 * std::f64::consts::E]))
            .collect();
        write_file(&path, &measurements_csv(&recs)).unwrap();
        let back = read_measurements(&path).unwrap();
        assert_eq!(back.len(), 25);
        for (a, b) in back.iter().zip(&recs) {
            assert_eq!(a.0, b.0);
            assert_eq!(a.1[0].to_bits(), b.1[0].to_bits());
            assert_eq!(a.1[1].to_bits(), b.1[1].to_bits());
        }
    }

    #[test]
    fn ill_formed_measurements_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        for text in ["x,y,u,v\n0,0,0,0\n", "X1,X2,u1,u2\n0,0,abc,0\n", "X1,X2,u1,u2\n0,0,0\n"] {
            write_file(&path, text).unwrap();
            assert!(matches!(read_measurements(&path), Err(CliError::Config(_))), "{text:?}");
        }
        assert!(read_measurements(&dir.path().join("missing.csv")).is_err());
    }

    #[test]
    fn number_format_has_seventeen_digits() {
        assert_eq!(num(0.1), "1.0000000000000001e-1");
        assert_eq!(num(0.0), "0.0000000000000000e0");
        assert_eq!(num(-2.5), "-2.5000000000000000e0");
    }
}
