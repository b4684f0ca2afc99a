//! The four subcommands.

use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use elastonet_core::femsolve::{newton_solve, Discretization, FemSolution, NewtonSettings, StructuredMesh};
use elastonet_core::pinn::gradcheck::{self, GradcheckReport, GradcheckSettings, CATEGORIES};
use elastonet_core::pinn::{
    build_collocation, error_metrics, network_seeds, predict_mu, train as run_training, HistoryRecord,
    LossBreakdown, ModulusSource, Objective, TrainConfig, TrainError, TrainObserver, TrainState,
    TrainingHistory,
};
use elastonet_core::{NetworkParams, Point2};
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, Mode};
use crate::io::{self, Checkpoint};
use crate::{modulus, CliError};

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn write_manifest(
    out: &Path,
    cfg: &ExperimentConfig,
    command: &str,
    started: f64,
    status: &str,
    extra: Value,
) -> Result<(), CliError> {
    let (su, sm) = network_seeds(cfg.training.seed);
    let manifest = json!({
        "command": command,
        "status": status,
        "tool": "elastonet",
        "version": env!("CARGO_PKG_VERSION"),
        "core_version": elastonet_core::VERSION,
        "seed": cfg.training.seed,
        "network_seeds": { "displacement": su, "modulus": sm },
        "config": serde_json::to_value(cfg).expect("config serializes"),
        "started_unix": started,
        "finished_unix": unix_now(),
        "details": extra,
    });
    io::write_json(&out.join(io::MANIFEST), &manifest)?;
    io::write_file(&out.join(io::CONFIG_ECHO), &(cfg.to_json() + "\n"))
}

/// FEM solution of the configured problem.
pub fn solve_forward(cfg: &ExperimentConfig) -> Result<FemSolution, CliError> {
    let field = modulus::build(&cfg.problem.modulus)?;
    let d = &cfg.discretization;
    let mesh = StructuredMesh::new(d.fem_elements).map_err(config_err)?;
    let disc = Discretization::new(mesh, &field.as_ref()).map_err(config_err)?;
    let settings = NewtonSettings {
        load_steps: d.fem_load_steps,
        max_halvings: d.fem_max_halvings,
        ..NewtonSettings::default()
    };
    newton_solve(&disc, cfg.problem.load, &settings).map_err(|e| CliError::Numerical(format!("FEM: {e}")))
}

/// Runs the FEM forward problem and writes the measurement CSV.
pub fn generate(cfg: &ExperimentConfig, out: &Path, quiet: bool) -> Result<Vec<(Point2, [f64; 2])>, CliError> {
    let started = unix_now();
    let sol = solve_forward(cfg)?;
    let points = elastonet_core::pinn::square_grid(cfg.discretization.measurement_per_side);
    let u = sol.sample_displacements(&points).map_err(config_err)?;
    let records: Vec<_> = points.into_iter().zip(u).collect();
    io::write_file(&out.join(io::MEASUREMENTS), &io::measurements_csv(&records))?;
    let r = sol.report();
    let max_dj = sol.element_volume_change().into_iter().map(f64::abs).fold(0.0, f64::max);
    let details = json!({
        "fem_elements": cfg.discretization.fem_elements,
        "accepted_increments": r.steps.len(),
        "newton_iterations": r.total_iterations(),
        "halvings": r.halvings,
        "step_overs": r.step_overs,
        "left_edge_reaction": sol.left_edge_reaction(),
        "max_element_volume_change": max_dj,
        "rows": records.len(),
    });
    if !quiet {
        eprintln!(
            "generate: {} rows, {} increments, {} Newton iterations, reaction {:.6e}",
            records.len(),
            r.steps.len(),
            r.total_iterations(),
            sol.left_edge_reaction()
        );
    }
    write_manifest(out, cfg, "generate", started, "ok", details)?;
    Ok(records)
}

/// Streams progress and writes periodic checkpoints.
struct Progress<'a> {
    out: &'a Path,
    quiet: bool,
    history: TrainingHistory,
    failure: Option<CliError>,
}

impl TrainObserver for Progress<'_> {
    fn on_record(&mut self, r: &HistoryRecord) -> ControlFlow<()> {
        self.history.push(*r);
        if !self.quiet {
            let t = r.loss.terms();
            let mut line = format!("epoch {:>9}  total {:.4e}", r.epoch, r.loss.total());
            for (name, v) in LossBreakdown::TERM_NAMES.iter().zip(t) {
                line.push_str(&format!("  {name} {v:.3e}"));
            }
            if let Some(e) = r.relative_l2 {
                line.push_str(&format!("  rel_l2 {e:.4}"));
            }
            eprintln!("{line}");
        }
        ControlFlow::Continue(())
    }

    fn on_checkpoint(&mut self, state: &TrainState) -> ControlFlow<()> {
        let ck = Checkpoint {
            state: state.clone(),
            history: self.history.clone(),
        };
        let path = self.out.join(io::CHECKPOINT_DIR).join(io::checkpoint_name(state.epoch));
        match io::write_file(&path, &ck.to_json()) {
            Ok(()) => ControlFlow::Continue(()),
            Err(e) => {
                self.failure = Some(e);
                ControlFlow::Break(())
            }
        }
    }
}

fn loss_json(l: &LossBreakdown) -> Value {
    let mut m = serde_json::Map::new();
    for (name, v) in LossBreakdown::TERM_NAMES.iter().zip(l.terms()) {
        m.insert((*name).into(), json!(v));
    }
    m.insert("total".into(), json!(l.total()));
    Value::Object(m)
}

fn grid_points(cfg: &ExperimentConfig) -> Vec<Point2> {
    let e = &cfg.evaluation;
    let n = e.grid_per_side;
    let at = |r: [f64; 2], i: usize| {
        if n == 1 {
            r[0]
        } else {
            r[0] + (r[1] - r[0]) * i as f64 / (n - 1) as f64
        }
    };
    let mut pts = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            pts.push(Point2::new(at(e.x1_range, i), at(e.x2_range, j)));
        }
    }
    pts
}

fn summary(pred: &[f64], truth: &[f64]) -> Result<Value, CliError> {
    let m = error_metrics(pred, truth).map_err(|e| CliError::Numerical(e.to_string()))?;
    Ok(json!({
        "points": truth.len(),
        "relative_l2": m.relative_l2,
        "rms_over_mean": m.rms_over_mean,
        "max_abs": m.max_abs,
        "max_pointwise": m.max_pointwise(),
        "truth_mean": m.truth_mean,
    }))
}

fn argmax(points: &[Point2], v: &[f64]) -> Value {
    let k = (0..v.len()).fold(0, |b, k| if v[k] > v[b] { k } else { b });
    json!({ "x1": points[k].x1, "x2": points[k].x2, "mu": v[k] })
}

/// Modulus metrics of `mu` against the configured field; writes the field CSV.
fn modulus_report(cfg: &ExperimentConfig, out: &Path, mu: &NetworkParams) -> Result<Value, CliError> {
    let field = modulus::build(&cfg.problem.modulus)?;
    let predict = |pts: &[Point2]| -> Result<Vec<f64>, CliError> {
        pts.iter()
            .map(|&x| predict_mu(mu, x).map_err(config_err))
            .collect()
    };
    let grid = grid_points(cfg);
    let (gt, gp) = (grid.iter().map(|&x| field.value(x)).collect::<Vec<_>>(), predict(&grid)?);
    io::write_file(&out.join(io::FIELD), &io::field_csv(&grid, &gt, &gp))?;
    let data = elastonet_core::pinn::square_grid(cfg.discretization.measurement_per_side);
    let (dt, dp) = (data.iter().map(|&x| field.value(x)).collect::<Vec<_>>(), predict(&data)?);
    let probe_pts: Vec<Point2> = cfg.evaluation.probes.iter().map(|p| Point2::new(p[0], p[1])).collect();
    let probes: Vec<Value> = probe_pts
        .iter()
        .zip(predict(&probe_pts)?)
        .map(|(x, p)| {
            let t = field.value(*x);
            json!({ "x1": x.x1, "x2": x.x2, "mu_true": t, "mu_pred": p, "signed_error": p - t })
        })
        .collect();
    Ok(json!({
        "evaluation_grid": {
            "per_side": cfg.evaluation.grid_per_side,
            "x1_range": cfg.evaluation.x1_range,
            "x2_range": cfg.evaluation.x2_range,
            "errors": summary(&gp, &gt)?,
            "peak_true": argmax(&grid, &gt),
            "peak_pred": argmax(&grid, &gp),
        },
        "measurement_grid": summary(&dp, &dt)?,
        "probes": probes,
    }))
}

/// Largest displacement error of the network against measured data.
pub fn displacement_error(u: &NetworkParams, data: &[(Point2, [f64; 2])]) -> Result<f64, CliError> {
    let mut worst: f64 = 0.0;
    for (x, m) in data {
        let y = u.forward(&[x.x1, x.x2]).map_err(config_err)?;
        worst = worst.max((y[0] - m[0]).abs()).max((y[1] - m[1]).abs());
    }
    Ok(worst)
}

/// Outcome of a training run, for callers driving it as a library.
#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub state: TrainState,
    pub history: TrainingHistory,
    pub final_loss: LossBreakdown,
    pub metrics: Value,
}

/// Trains and writes the full output bundle.
pub fn train(cfg: &ExperimentConfig, out: &Path, resume: Option<&Path>, quiet: bool) -> Result<TrainSummary, CliError> {
    let started = unix_now();
    let mut sets = build_collocation(&cfg.problem_spec()).map_err(config_err)?;
    let data_path = cfg.data_path(out);
    let data = match (cfg.training.mode, data_path.exists()) {
        (Mode::Inverse, _) | (Mode::Forward, true) => {
            let d = io::read_measurements(&data_path)?;
            sets.attach_measurements(&d)
                .map_err(|e| CliError::Config(format!("{}: {e}", data_path.display())))?;
            Some(d)
        }
        (Mode::Forward, false) => None,
    };
    let field = modulus::build(&cfg.problem.modulus)?;
    let source = match cfg.training.mode {
        Mode::Inverse => ModulusSource::Network,
        Mode::Forward => ModulusSource::Frozen(field.as_ref()),
    };
    let mut objective =
        Objective::new(&sets, cfg.weights(), source, cfg.u_config(), cfg.mu_config()).map_err(config_err)?;

    let (state, prior) = match resume {
        Some(p) => {
            let ck = Checkpoint::load(p)?;
            if *ck.state.u.config() != cfg.u_config() || *ck.state.mu.config() != cfg.mu_config() {
                return Err(CliError::Config("checkpoint networks differ from the configuration".into()));
            }
            let epoch = ck.state.epoch;
            let prior: TrainingHistory = ck.history.into_iter().filter(|r| r.epoch < epoch).collect();
            (ck.state, prior)
        }
        None => {
            let (su, sm) = network_seeds(cfg.training.seed);
            let u = NetworkParams::init_xavier(cfg.u_config(), su).map_err(config_err)?;
            let mu = NetworkParams::init_xavier(cfg.mu_config(), sm).map_err(config_err)?;
            (TrainState::fresh(u, mu, cfg.training.learning_rate), Vec::new())
        }
    };
    let truth = match cfg.training.mode {
        Mode::Inverse => {
            let x = sets.data_points.clone();
            let v = x.iter().map(|&p| field.value(p)).collect();
            Some((x, v))
        }
        Mode::Forward => None,
    };
    let tc = TrainConfig {
        epochs: cfg.training.epochs,
        learning_rate: cfg.training.learning_rate,
        history_every: cfg.training.history_every,
        checkpoint_every: cfg.training.checkpoint_every,
        truth,
    };
    let mut progress = Progress {
        out,
        quiet,
        history: prior,
        failure: None,
    };
    let resumed_from = resume.map(|p| p.display().to_string());
    let result = run_training(&mut objective, state, &tc, &mut progress);
    let history = progress.history;
    match result {
        Ok(outcome) => {
            let ck = Checkpoint {
                state: outcome.state.clone(),
                history: history.clone(),
            };
            io::write_file(&out.join(io::FINAL_CHECKPOINT), &ck.to_json())?;
            io::write_file(&out.join(io::HISTORY), &io::history_csv(&history))?;
            let mut metrics = json!({
                "mode": cfg.training.mode,
                "epochs": outcome.state.epoch,
                "final_loss": loss_json(&outcome.final_loss),
            });
            if cfg.training.mode == Mode::Inverse {
                metrics["modulus"] = modulus_report(cfg, out, &outcome.state.mu)?;
            }
            if let Some(d) = &data {
                metrics["displacement_max_abs_error"] = json!(displacement_error(&outcome.state.u, d)?);
            }
            io::write_json(&out.join(io::METRICS), &metrics)?;
            let details = json!({ "data": data.as_ref().map(|_| data_path.display().to_string()),
                                  "resumed_from": resumed_from });
            write_manifest(out, cfg, "train", started, "ok", details)?;
            Ok(TrainSummary {
                state: outcome.state,
                history,
                final_loss: outcome.final_loss,
                metrics,
            })
        }
        Err(TrainError::Setup(e)) => Err(config_err(e)),
        Err(TrainError::Stopped { .. }) => Err(progress
            .failure
            .unwrap_or_else(|| CliError::Numerical("training stopped".into()))),
        Err(TrainError::Diverged {
            epoch,
            cause,
            last_good,
            ..
        }) => {
            let ck = Checkpoint {
                state: *last_good,
                history: history.clone(),
            };
            let path: PathBuf = out.join(io::CHECKPOINT_DIR).join("last_good.json");
            io::write_file(&path, &ck.to_json())?;
            io::write_file(&out.join(io::HISTORY), &io::history_csv(&history))?;
            let details = json!({ "diverged_at": epoch, "cause": cause.to_string(),
                                  "last_good": path.display().to_string() });
            write_manifest(out, cfg, "train", started, "diverged", details)?;
            Err(CliError::Numerical(format!(
                "training diverged at epoch {epoch} ({cause}); last finite state saved to {}",
                path.display()
            )))
        }
    }
}

/// Writes the field CSV and `evaluation.json` for a checkpoint.
pub fn evaluate(cfg: &ExperimentConfig, out: &Path, checkpoint: &Path) -> Result<Value, CliError> {
    let started = unix_now();
    let ck = Checkpoint::load(checkpoint)?;
    let report = modulus_report(cfg, out, &ck.state.mu)?;
    io::write_json(&out.join("evaluation.json"), &report)?;
    let details = json!({ "checkpoint": checkpoint.display().to_string(), "epoch": ck.state.epoch });
    write_manifest(out, cfg, "evaluate", started, "ok", details)?;
    Ok(report)
}

pub fn gradcheck(cfg: &ExperimentConfig, samples: usize, fault: Option<&str>) -> Result<GradcheckReport, CliError> {
    let fault = match fault {
        None => None,
        Some(f) => Some(
            *CATEGORIES
                .iter()
                .find(|c| **c == f)
                .ok_or_else(|| CliError::Config(format!("unknown gradcheck category {f:?}")))?,
        ),
    };
    if samples == 0 {
        return Err(CliError::Config("gradcheck needs at least one sample".into()));
    }
    let settings = GradcheckSettings {
        seed: cfg.training.seed,
        loss_samples: samples,
        u_config: cfg.u_config(),
        mu_config: cfg.mu_config(),
        fault,
        ..GradcheckSettings::default()
    };
    gradcheck::run(&settings).map_err(|e| CliError::Numerical(e.to_string()))
}

pub fn format_gradcheck(report: &GradcheckReport) -> String {
    let mut s = format!("{:<22} {:>7} {:>12} {:>10}  result\n", "category", "checks", "worst", "threshold");
    for c in &report.categories {
        s.push_str(&format!(
            "{:<22} {:>7} {:>12.3e} {:>10.0e}  {}\n",
            c.name,
            c.checks,
            c.worst,
            c.threshold,
            if c.passed() { "pass" } else { "FAIL" }
        ));
    }
    s
}
