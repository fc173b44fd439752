//! Adam with bias correction, global-norm gradient clipping, and the
//! plateau-halving learning-rate schedule.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::ParamStore;
use crate::numcore::Real;

use super::{TrainConfig, TrainError};

const BETA1: Real = 0.9;
const BETA2: Real = 0.999;
const EPS: Real = 1e-8;

/// Fixed global-norm clip applied to every batch gradient.
pub const CLIP_NORM: Real = 1.0;

/// Flat gradient storage keyed by parameter name. Parameters absent from
/// the map received no gradient and must not move.
pub type Gradients = BTreeMap<String, Vec<Real>>;

/// Adam moments, lazily allocated per parameter on first gradient.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OptimizerState {
    m: BTreeMap<String, Vec<Real>>,
    v: BTreeMap<String, Vec<Real>>,
    step: u64,
}

impl OptimizerState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// Scale all gradients by `CLIP_NORM / norm` when their joint Euclidean
/// norm exceeds `CLIP_NORM`.
pub fn clip_gradients(grads: &mut Gradients) {
    let norm = grads
        .values()
        .flat_map(|g| g.iter())
        .map(|g| g * g)
        .sum::<Real>()
        .sqrt();
    if norm > CLIP_NORM {
        let scale = CLIP_NORM / norm;
        for g in grads.values_mut() {
            for x in g {
                *x *= scale;
            }
        }
    }
}

/// One bias-corrected Adam update over every parameter with a gradient.
pub fn adam_step(
    store: &mut ParamStore,
    grads: &Gradients,
    state: &mut OptimizerState,
    lr: Real,
) -> Result<(), TrainError> {
    state.step += 1;
    let t = state.step as Real;
    let mc = 1.0 - BETA1.powf(t);
    let vc = 1.0 - BETA2.powf(t);

    for (name, grad) in grads {
        let current = store
            .get(name)
            .map_err(TrainError::Model)?
            .values()
            .to_vec();
        if current.len() != grad.len() {
            return Err(TrainError::GradShape { name: name.clone() });
        }
        let m = state
            .m
            .entry(name.clone())
            .or_insert_with(|| vec![0.0; grad.len()]);
        let v = state
            .v
            .entry(name.clone())
            .or_insert_with(|| vec![0.0; grad.len()]);
        let mut updated = current;
        for i in 0..grad.len() {
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * grad[i];
            v[i] = BETA2 * v[i] + (1.0 - BETA2) * grad[i] * grad[i];
            let m_hat = m[i] / mc;
            let v_hat = v[i] / vc;
            updated[i] -= lr * m_hat / (v_hat.sqrt() + EPS);
        }
        store.set(name, updated).map_err(TrainError::Model)?;
    }
    Ok(())
}

/// Plateau schedule: the rate starts at `lr_initial` and halves, down to
/// `lr_floor`, whenever validation loss fails to improve for
/// `lr_halve_patience` consecutive observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    lr: Real,
    /// Best validation loss so far; `None` before the first observation.
    best: Option<Real>,
    since_improve: usize,
}

impl LrSchedule {
    pub fn new(cfg: &TrainConfig) -> Self {
        LrSchedule {
            lr: cfg.lr_initial,
            best: None,
            since_improve: 0,
        }
    }

    pub fn lr(&self) -> Real {
        self.lr
    }

    /// Record one validation loss and return the rate for the next steps.
    pub fn observe(&mut self, val_loss: Real, cfg: &TrainConfig) -> Real {
        let improved = match self.best {
            None => true,
            Some(best) => val_loss < best,
        };
        if improved {
            self.best = Some(val_loss);
            self.since_improve = 0;
        } else {
            self.since_improve += 1;
            if self.since_improve >= cfg.lr_halve_patience {
                self.lr = (self.lr / 2.0).max(cfg.lr_floor);
                self.since_improve = 0;
            }
        }
        self.lr
    }
}

/// The learning rate after replaying a validation-loss history from a
/// fresh schedule.
pub fn lr_at(cfg: &TrainConfig, history: &[Real]) -> Real {
    let mut schedule = LrSchedule::new(cfg);
    for &loss in history {
        schedule.observe(loss, cfg);
    }
    schedule.lr()
}
