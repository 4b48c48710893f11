//! One-layer graph-convolutional autoencoder trained by full-batch gradient
//! descent with norm clipping.
//!
//! The encoder is a single linear graph convolution over implicit identity
//! node features: `Z = P * W`, with `P` the renormalized propagation matrix.
//! The decoder is the sigmoid inner product `sigmoid(Z * Z^T)`, compared to
//! the reconstruction target under the mixed loss
//! `(1 - alpha) * ||D||_F + alpha * ||D||_1` of the difference matrix `D`.
//! Gradients are computed analytically; training stops once the relative
//! loss improvement over a whole epoch window falls below a threshold.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::TargetMode;

#[derive(Debug, Clone, PartialEq)]
pub struct GaeModel {
    propagation: Array2<f64>,
    weight: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Balance between the Frobenius (alpha = 0) and entrywise L1 terms.
    pub alpha: f64,
    pub learning_rate: f64,
    /// Gradients with a larger Frobenius norm are rescaled to this norm.
    pub max_grad_norm: f64,
    /// Stopping is evaluated every `check_window` epochs.
    pub check_window: u64,
    /// Stop once the relative improvement over a window falls below this.
    pub rel_improvement_stop: f64,
    pub max_epochs: u64,
    pub seed: u64,
    pub target_mode: TargetMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.0,
            learning_rate: 0.01,
            max_grad_norm: 1e-6,
            check_window: 10_000,
            rel_improvement_stop: 0.001,
            max_epochs: 1_000_000,
            seed: 0,
            target_mode: TargetMode::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must be in [0, 1), got {}",
                self.alpha
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be > 0".to_string()));
        }
        if !(self.max_grad_norm > 0.0) {
            return Err(Error::InvalidConfig("max_grad_norm must be > 0".to_string()));
        }
        if self.check_window == 0 {
            return Err(Error::InvalidConfig("check_window must be >= 1".to_string()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxEpochs,
}

/// Loss samples over training, logged every [`LOG_EVERY`] epochs plus the
/// window boundaries and the final epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub entries: Vec<(u64, f64)>,
    pub final_epoch: u64,
    pub stop_reason: StopReason,
}

pub const LOG_EVERY: u64 = 100;

impl TrainTrace {
    /// Two-column text form: `epoch<TAB>loss`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for &(epoch, loss) in &self.entries {
            out.push_str(&format!("{epoch}\t{loss}\n"));
        }
        out
    }

    pub fn final_loss(&self) -> f64 {
        self.entries.last().map(|&(_, l)| l).unwrap_or(f64::NAN)
    }
}

impl GaeModel {
    /// Seeded uniform Glorot-style initialization of the weight matrix.
    pub fn init(propagation: Array2<f64>, dimension: usize, seed: u64) -> GaeModel {
        let n = propagation.nrows();
        assert_eq!(n, propagation.ncols(), "propagation must be square");
        assert!(dimension >= 1, "embedding dimension must be >= 1");
        let scale = (6.0 / (n + dimension) as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..n * dimension)
            .map(|_| rng.gen_range(-scale..=scale))
            .collect();
        let weight = Array2::from_shape_vec((n, dimension), values).expect("shape");
        GaeModel {
            propagation,
            weight,
        }
    }

    pub fn with_weight(propagation: Array2<f64>, weight: Array2<f64>) -> GaeModel {
        assert_eq!(propagation.nrows(), propagation.ncols());
        assert_eq!(propagation.ncols(), weight.nrows());
        GaeModel {
            propagation,
            weight,
        }
    }

    pub fn n(&self) -> usize {
        self.propagation.nrows()
    }

    pub fn dimension(&self) -> usize {
        self.weight.ncols()
    }

    pub fn weight(&self) -> &Array2<f64> {
        &self.weight
    }

    pub fn propagation(&self) -> &Array2<f64> {
        &self.propagation
    }

    /// Encoder output and decoded reconstruction.
    pub fn forward(&self) -> (Array2<f64>, Array2<f64>) {
        let embeddings = self.propagation.dot(&self.weight);
        let reconstruction = embeddings.dot(&embeddings.t()).mapv(sigmoid);
        (embeddings, reconstruction)
    }

    /// Encoder output only.
    pub fn embeddings(&self) -> Array2<f64> {
        self.propagation.dot(&self.weight)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn loss(reconstruction: &Array2<f64>, target: &Array2<f64>, alpha: f64) -> f64 {
    let mut squares = 0.0;
    let mut absolutes = 0.0;
    for (got, want) in reconstruction.iter().zip(target.iter()) {
        let diff = got - want;
        squares += diff * diff;
        absolutes += diff.abs();
    }
    (1.0 - alpha) * squares.sqrt() + alpha * absolutes
}

/// Analytic gradient of the loss with respect to the weight matrix.
pub fn gradient(model: &GaeModel, target: &Array2<f64>, alpha: f64) -> Array2<f64> {
    let (embeddings, reconstruction) = model.forward();
    gradient_from_forward(model, &embeddings, &reconstruction, target, alpha)
}

fn gradient_from_forward(
    model: &GaeModel,
    embeddings: &Array2<f64>,
    reconstruction: &Array2<f64>,
    target: &Array2<f64>,
    alpha: f64,
) -> Array2<f64> {
    let diff = reconstruction - target;
    let frobenius = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
    // d loss / d reconstruction; the L1 subgradient is 0 at exact ties, and
    // the Frobenius term contributes nothing at a perfect reconstruction.
    let mut upstream = if frobenius > 0.0 {
        &diff * ((1.0 - alpha) / frobenius)
    } else {
        Array2::zeros(diff.raw_dim())
    };
    if alpha > 0.0 {
        upstream.zip_mut_with(&diff, |u, &d| {
            *u += alpha * if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 }
        });
    }
    // Through the sigmoid.
    upstream.zip_mut_with(reconstruction, |u, &r| *u *= r * (1.0 - r));
    // Through the inner product and the graph convolution.
    let d_embeddings = (&upstream + &upstream.t()).dot(embeddings);
    model.propagation.t().dot(&d_embeddings)
}

/// Rescale the gradient to `max_norm` if its Frobenius norm exceeds it.
pub fn clip_gradient(gradient: Array2<f64>, max_norm: f64) -> Array2<f64> {
    let norm = gradient.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        gradient * (max_norm / norm)
    } else {
        gradient
    }
}

/// Full-batch gradient descent on the reconstruction loss. Deterministic for
/// a fixed initialized model and config.
pub fn train(
    mut model: GaeModel,
    target: &Array2<f64>,
    config: &TrainConfig,
) -> Result<(GaeModel, TrainTrace)> {
    config.validate()?;
    if target.nrows() != model.n() || target.ncols() != model.n() {
        return Err(Error::SizeMismatch {
            expected: model.n(),
            actual: target.nrows(),
        });
    }

    let mut entries: Vec<(u64, f64)> = Vec::new();
    let (mut embeddings, mut reconstruction) = model.forward();
    let mut current = loss(&reconstruction, target, config.alpha);
    if !current.is_finite() {
        return Err(Error::NonFiniteLoss {
            epoch: 0,
            trace: Box::new(TrainTrace {
                entries,
                final_epoch: 0,
                stop_reason: StopReason::MaxEpochs,
            }),
        });
    }
    entries.push((0, current));
    let mut window_loss = current;
    let mut epoch = 0u64;

    let stop_reason = loop {
        if epoch >= config.max_epochs {
            break StopReason::MaxEpochs;
        }
        let step = clip_gradient(
            gradient_from_forward(&model, &embeddings, &reconstruction, target, config.alpha),
            config.max_grad_norm,
        );
        model.weight.scaled_add(-config.learning_rate, &step);
        epoch += 1;

        let forwarded = model.forward();
        embeddings = forwarded.0;
        reconstruction = forwarded.1;
        current = loss(&reconstruction, target, config.alpha);
        if !current.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                trace: Box::new(TrainTrace {
                    entries,
                    final_epoch: epoch,
                    stop_reason: StopReason::MaxEpochs,
                }),
            });
        }
        if epoch % LOG_EVERY == 0 || epoch % config.check_window == 0 {
            entries.push((epoch, current));
        }
        if epoch % config.check_window == 0 {
            let relative = (window_loss - current) / window_loss;
            if window_loss <= 0.0 || relative < config.rel_improvement_stop {
                break StopReason::Converged;
            }
            window_loss = current;
        }
    };

    if entries.last().map(|&(e, _)| e) != Some(epoch) {
        entries.push((epoch, current));
    }
    Ok((
        model,
        TrainTrace {
            entries,
            final_epoch: epoch,
            stop_reason,
        },
    ))
}
