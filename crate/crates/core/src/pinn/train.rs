//! Full-batch Adam training of both networks.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::ControlFlow;

use super::metrics::{error_metrics, predict_mu};
use super::{AdamState, LossBreakdown, Objective, PinnError};
use crate::mechanics::Point2;
use crate::nets::NetworkParams;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Total epochs, counted from zero (a resumed run continues up to here).
    pub epochs: u64,
    pub learning_rate: f64,
    /// Record the loss every this many epochs (and at the end).
    pub history_every: u64,
    /// Hand a checkpoint to the observer every this many epochs; 0 disables.
    pub checkpoint_every: u64,
    /// Truth samples for error metrics in the history, if wanted.
    pub truth: Option<(Vec<Point2>, Vec<f64>)>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 2_000_000,
            learning_rate: 1e-3,
            history_every: 1000,
            checkpoint_every: 100_000,
            truth: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), PinnError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(PinnError::Config("learning rate must be positive"));
        }
        if self.history_every == 0 {
            return Err(PinnError::Config("history interval must be positive"));
        }
        if let Some((x, v)) = &self.truth {
            if x.len() != v.len() || x.is_empty() {
                return Err(PinnError::Config("truth samples are empty or mismatched"));
            }
        }
        Ok(())
    }
}

/// Everything needed to continue a run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub epoch: u64,
    pub u: NetworkParams,
    pub mu: NetworkParams,
    pub adam_u: AdamState,
    pub adam_mu: AdamState,
}

impl TrainState {
    pub fn fresh(u: NetworkParams, mu: NetworkParams, learning_rate: f64) -> Self {
        TrainState {
            epoch: 0,
            adam_u: AdamState::new(u.len(), learning_rate),
            adam_mu: AdamState::new(mu.len(), learning_rate),
            u,
            mu,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryRecord {
    /// Number of updates applied before the loss was evaluated.
    pub epoch: u64,
    pub loss: LossBreakdown,
    pub relative_l2: Option<f64>,
    pub max_abs: Option<f64>,
}

pub type TrainingHistory = Vec<HistoryRecord>;

/// Progress hooks. Returning `Break` stops training cleanly.
pub trait TrainObserver {
    fn on_record(&mut self, _record: &HistoryRecord) -> ControlFlow<()> {
        ControlFlow::Continue(())
    }
    fn on_checkpoint(&mut self, _state: &TrainState) -> ControlFlow<()> {
        ControlFlow::Continue(())
    }
}

pub struct NoObserver;

impl TrainObserver for NoObserver {}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Setup(PinnError),
    /// The loss or its gradient stopped being finite; `last_good` holds the
    /// parameters of the last epoch whose loss was finite.
    #[error("training diverged at epoch {epoch}: {cause}")]
    Diverged {
        epoch: u64,
        cause: PinnError,
        last_good: alloc::boxed::Box<TrainState>,
        history: TrainingHistory,
    },
    #[error("stopped by observer at epoch {epoch}")]
    Stopped { epoch: u64, state: alloc::boxed::Box<TrainState>, history: TrainingHistory },
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub history: TrainingHistory,
    pub final_loss: LossBreakdown,
}

fn record(
    epoch: u64,
    loss: LossBreakdown,
    mu: &NetworkParams,
    config: &TrainConfig,
    trains_mu: bool,
) -> Result<HistoryRecord, PinnError> {
    let (mut rel, mut max) = (None, None);
    if let (Some((x, truth)), true) = (&config.truth, trains_mu) {
        let pred = x.iter().map(|p| predict_mu(mu, *p)).collect::<Result<Vec<_>, _>>()?;
        let m = error_metrics(&pred, truth)?;
        rel = Some(m.relative_l2);
        max = Some(m.max_abs);
    }
    Ok(HistoryRecord {
        epoch,
        loss,
        relative_l2: rel,
        max_abs: max,
    })
}

/// Runs Adam from `state.epoch` up to `config.epochs`.
pub fn train(
    objective: &mut Objective,
    mut state: TrainState,
    config: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome, TrainError> {
    config.validate().map_err(TrainError::Setup)?;
    if state.adam_u.m.len() != state.u.len() || state.adam_mu.m.len() != state.mu.len() {
        return Err(TrainError::Setup(PinnError::Config("optimizer state does not match parameters")));
    }
    if state.epoch > config.epochs {
        return Err(TrainError::Setup(PinnError::Config("state is past the epoch budget")));
    }
    state.adam_u.lr = config.learning_rate;
    state.adam_mu.lr = config.learning_rate;
    let trains_mu = objective.trains_modulus();
    let mut gu = vec![0.0; state.u.len()];
    let mut gm = vec![0.0; state.mu.len()];
    let mut history = TrainingHistory::new();
    let mut last_good = state.clone();

    macro_rules! bail {
        ($cause:expr) => {
            return Err(TrainError::Diverged {
                epoch: state.epoch,
                cause: $cause,
                last_good: alloc::boxed::Box::new(last_good),
                history,
            })
        };
    }

    while state.epoch < config.epochs {
        let loss = match objective.loss_and_gradient(&state.u, &state.mu, &mut gu, &mut gm) {
            Ok(l) if l.total().is_finite() => l,
            Ok(_) => bail!(PinnError::NonFinite { term: "total" }),
            Err(e) => bail!(e),
        };
        last_good.clone_from(&state);
        if state.epoch % config.history_every == 0 {
            let r = record(state.epoch, loss, &state.mu, config, trains_mu).map_err(TrainError::Setup)?;
            history.push(r);
            if observer.on_record(&r).is_break() {
                return Err(TrainError::Stopped {
                    epoch: state.epoch,
                    state: alloc::boxed::Box::new(state),
                    history,
                });
            }
        }
        if let Err(e) = state.adam_u.step(state.u.values_mut(), &gu) {
            bail!(e);
        }
        if trains_mu {
            if let Err(e) = state.adam_mu.step(state.mu.values_mut(), &gm) {
                bail!(e);
            }
        }
        state.epoch += 1;
        if config.checkpoint_every > 0
            && state.epoch % config.checkpoint_every == 0
            && observer.on_checkpoint(&state).is_break()
        {
            return Err(TrainError::Stopped {
                epoch: state.epoch,
                state: alloc::boxed::Box::new(state),
                history,
            });
        }
    }
    let final_loss = match objective.loss(&state.u, &state.mu) {
        Ok(l) if l.total().is_finite() => l,
        Ok(_) => bail!(PinnError::NonFinite { term: "total" }),
        Err(e) => bail!(e),
    };
    if history.last().map(|r| r.epoch) != Some(state.epoch) {
        let r = record(state.epoch, final_loss, &state.mu, config, trains_mu).map_err(TrainError::Setup)?;
        history.push(r);
        let _ = observer.on_record(&r);
    }
    Ok(TrainOutcome {
        state,
        history,
        final_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanics::ConstantModulus;
    use crate::pinn::objective::tests::{perturbed, small_configs, small_problem};
    use crate::pinn::{LossWeights, ModulusSource};

    fn setup() -> (Objective, TrainState) {
        let (cu, cm) = small_configs();
        let sets = small_problem(1);
        let obj = Objective::new(&sets, LossWeights::default(), ModulusSource::Network, cu, cm).unwrap();
        let st = TrainState::fresh(perturbed(cu, 2), perturbed(cm, 3), 1e-3);
        (obj, st)
    }

    fn config(epochs: u64) -> TrainConfig {
        TrainConfig {
            epochs,
            history_every: 10,
            checkpoint_every: 25,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_is_identity() {
        let (mut obj, st) = setup();
        let out = train(&mut obj, st.clone(), &config(0), &mut NoObserver).unwrap();
        assert_eq!(out.state, st);
        assert_eq!(out.history.len(), 1);
        assert_eq!(out.history[0].epoch, 0);
    }

    #[test]
    fn loss_decreases_and_history_cadence() {
        let (mut obj, st) = setup();
        let l0 = obj.loss(&st.u, &st.mu).unwrap().total();
        let out = train(&mut obj, st, &config(200), &mut NoObserver).unwrap();
        let epochs: Vec<u64> = out.history.iter().map(|r| r.epoch).collect();
        assert_eq!(epochs, (0..=20).map(|k| k * 10).collect::<Vec<_>>());
        assert_eq!(out.history[0].loss.total(), l0);
        assert!(out.final_loss.total() < l0);
        assert_eq!(out.state.epoch, 200);
        assert_eq!(out.state.adam_u.t, 200);
    }

    #[test]
    fn runs_are_bit_identical_and_resumable() {
        let (mut obj, st) = setup();
        let a = train(&mut obj, st.clone(), &config(60), &mut NoObserver).unwrap();
        let b = train(&mut obj, st.clone(), &config(60), &mut NoObserver).unwrap();
        assert_eq!(a.state, b.state);
        struct Grab(Vec<TrainState>);
        impl TrainObserver for Grab {
            fn on_checkpoint(&mut self, s: &TrainState) -> ControlFlow<()> {
                self.0.push(s.clone());
                ControlFlow::Continue(())
            }
        }
        let mut g = Grab(Vec::new());
        train(&mut obj, st, &config(60), &mut g).unwrap();
        assert_eq!(g.0.iter().map(|s| s.epoch).collect::<Vec<_>>(), [25, 50]);
        let resumed = train(&mut obj, g.0[0].clone(), &config(60), &mut NoObserver).unwrap();
        assert_eq!(resumed.state, a.state);
    }

    #[test]
    fn frozen_modulus_is_not_updated() {
        let (cu, cm) = small_configs();
        let sets = small_problem(1);
        let field = ConstantModulus(0.3);
        let w = LossWeights { w_u: 0.0, ..LossWeights::default() };
        let mut obj = Objective::new(&sets, w, ModulusSource::Frozen(&field), cu, cm).unwrap();
        let st = TrainState::fresh(perturbed(cu, 2), perturbed(cm, 3), 1e-3);
        let out = train(&mut obj, st.clone(), &config(20), &mut NoObserver).unwrap();
        assert_eq!(out.state.mu, st.mu);
        assert_ne!(out.state.u, st.u);
    }

    #[test]
    fn divergence_keeps_last_good_state() {
        let (mut obj, st) = setup();
        let mut cfg = config(50);
        // One step of this size pushes the outputs past overflow.
        cfg.learning_rate = 1e200;
        match train(&mut obj, st, &cfg, &mut NoObserver) {
            Err(TrainError::Diverged { last_good, epoch, .. }) => {
                assert_eq!(epoch, 1);
                assert_eq!(last_good.epoch, 0);
                assert!(obj.loss(&last_good.u, &last_good.mu).unwrap().total().is_finite());
            }
            Ok(o) => panic!("expected divergence, got loss {}", o.final_loss.total()),
            Err(e) => panic!("{e}"),
        }
    }
}
