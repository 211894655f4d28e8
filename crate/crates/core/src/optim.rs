//! SGD with classical momentum and annealed Gaussian gradient noise.
//!
//! Per parameter element: g = grad (+ optional global-norm clip) + eps with
//! eps ~ N(0, sigma_t^2), then v = momentum * v + g and p = p - lr * v. Noise
//! is injected into the raw gradient before the momentum accumulation, and is
//! drawn only when eta > 0, so an eta = 0 run never touches the generator and
//! is bit-identical to plain momentum SGD. The step counter t advances once
//! per `step` call; sigma_t^2 = eta / (1 + t)^gamma.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{Tape, TensorId};

/// Optimizer state: hyperparameters, step counter, velocity buffers, and the
/// noise generator.
#[derive(Debug)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    pub eta: f64,
    pub gamma: f64,
    /// Optional max L2 norm for the whole gradient, applied before noise.
    pub clip: Option<f64>,
    t: u64,
    velocity: HashMap<usize, Vec<f64>>,
    rng: ChaCha8Rng,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64, eta: f64, gamma: f64, noise_seed: u64) -> Result<Self> {
        if lr <= 0.0 {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!("momentum must lie in [0, 1), got {momentum}")));
        }
        if eta < 0.0 {
            return Err(Error::Config(format!("eta must be non-negative, got {eta}")));
        }
        Ok(Sgd {
            lr,
            momentum,
            eta,
            gamma,
            clip: None,
            t: 0,
            velocity: HashMap::new(),
            rng: ChaCha8Rng::seed_from_u64(noise_seed),
        })
    }

    /// Steps taken so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// sigma_t = sqrt(eta / (1 + t)^gamma).
    pub fn noise_std(&self) -> f64 {
        (self.eta / (1.0 + self.t as f64).powf(self.gamma)).sqrt()
    }

    /// Applies one update to every parameter in `params`. Gradients must be
    /// populated; they are left untouched for the caller to zero.
    pub fn step(&mut self, tape: &mut Tape, params: &[TensorId]) -> Result<()> {
        for &p in params {
            if tape.grad(p).is_none() {
                return Err(Error::State(format!(
                    "parameter node {} has no gradient; run backward first",
                    p.0
                )));
            }
        }

        let clip_scale = match self.clip {
            Some(max_norm) => {
                let mut sq = 0.0;
                for &p in params {
                    sq += tape.grad(p).unwrap().iter().map(|g| g * g).sum::<f64>();
                }
                let norm = sq.sqrt();
                if norm > max_norm {
                    max_norm / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };

        let sigma = self.noise_std();
        let normal = if self.eta > 0.0 {
            Some(Normal::new(0.0, sigma).map_err(|e| Error::State(e.to_string()))?)
        } else {
            None
        };

        for &p in params {
            let n = tape.numel(p);
            let v = self
                .velocity
                .entry(p.0)
                .or_insert_with(|| vec![0.0; n]);
            if v.len() != n {
                return Err(Error::State(format!(
                    "velocity buffer for node {} has length {}, parameter has {n}",
                    p.0,
                    v.len()
                )));
            }
            let grads: Vec<f64> = tape.grad(p).unwrap().to_vec();
            let data = tape.data_mut(p);
            for idx in 0..n {
                let mut g = grads[idx] * clip_scale;
                if let Some(dist) = &normal {
                    g += dist.sample(&mut self.rng);
                }
                v[idx] = self.momentum * v[idx] + g;
                data[idx] -= self.lr * v[idx];
            }
        }
        self.t += 1;
        Ok(())
    }
}
