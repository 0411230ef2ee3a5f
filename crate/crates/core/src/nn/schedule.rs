use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Validation-driven learning-rate decay: the rate is multiplied by `decay`
/// whenever a validation loss exceeds the best one seen so far.
#[derive(Clone, Debug, PartialEq)]
pub struct LrSchedule<T> {
    decay: T,
    best: Option<T>,
}

impl<T: Scalar> LrSchedule<T> {
    pub fn new(decay: T) -> Self {
        Self { decay, best: None }
    }

    pub fn decay(&self) -> T {
        self.decay
    }

    pub fn best(&self) -> Option<T> {
        self.best
    }

    /// Forgets the best loss, e.g. when the loss being tracked changes.
    pub fn reset(&mut self) {
        self.best = None;
    }

    /// Returns the learning rate to use after observing `loss`.
    pub fn maybe_decay(&mut self, loss: T, lr: T) -> Result<T> {
        if !loss.is_finite() {
            return Err(Error::NonFinite { op: "maybe_decay_lr" });
        }
        match self.best {
            Some(best) if loss > best => Ok(lr * self.decay),
            _ => {
                self.best = Some(loss);
                Ok(lr)
            }
        }
    }
}
