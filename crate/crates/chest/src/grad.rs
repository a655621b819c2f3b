//! Named parameter tensors, reverse-mode gradients, and finite-difference
//! verification.
//!
//! A loss is anything implementing [`LossFunction`]: one generic `eval`
//! method over [`Real`] scalars. Evaluated with `f64` it produces the plain
//! loss value; evaluated with tape variables inside [`backward`] it produces
//! the same value plus exact gradients for every parameter entry. Because
//! both paths run the identical code, the finite-difference checker compares
//! an implementation against itself perturbed, which catches wrong local
//! derivatives without trusting any hand-written chain rule.

use crate::error::{ChestError, Result};
use crate::scalar::Real;
use crate::tape::Tape;

/// One named, shaped, flat tensor of `f64` values.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl ParamTensor {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Ordered collection of uniquely named tensors.
///
/// Iteration order is insertion order everywhere (views, gradients,
/// checkpoints, optimizer state), which keeps every downstream computation
/// deterministic.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    tensors: Vec<ParamTensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    /// Adds a tensor; the shape product must match the data length, the name
    /// must be new, and every value must be finite.
    pub fn insert(&mut self, name: &str, shape: Vec<usize>, data: Vec<f64>) -> Result<()> {
        if self.tensors.iter().any(|t| t.name == name) {
            return Err(ChestError::InvalidInput(format!(
                "duplicate parameter name {name:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(ChestError::DimensionMismatch {
                context: format!("parameter {name:?}"),
                expected,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(ChestError::NonFinite(format!("parameter {name:?}")));
        }
        self.tensors.push(ParamTensor {
            name: name.to_string(),
            shape,
            data,
        });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&ParamTensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| ChestError::InvalidInput(format!("unknown parameter {name:?}")))
    }

    /// Mutable access to a tensor's values; shapes stay fixed for life.
    pub fn values_mut(&mut self, name: &str) -> Result<&mut [f64]> {
        self.tensors
            .iter_mut()
            .find(|t| t.name == name)
            .map(|t| t.data.as_mut_slice())
            .ok_or_else(|| ChestError::InvalidInput(format!("unknown parameter {name:?}")))
    }

    pub fn tensors(&self) -> &[ParamTensor] {
        &self.tensors
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar entries across all tensors.
    pub fn total_len(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    /// Name of the first tensor containing a non-finite value, if any.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.tensors
            .iter()
            .find(|t| t.data.iter().any(|v| !v.is_finite()))
            .map(|t| t.name.as_str())
    }

    /// Read-only `f64` view for plain evaluation.
    pub fn view(&self) -> ParamView<'_, f64> {
        ParamView {
            entries: self
                .tensors
                .iter()
                .map(|t| ViewEntry {
                    name: &t.name,
                    shape: &t.shape,
                    data: &t.data,
                })
                .collect(),
        }
    }
}

struct ViewEntry<'a, S> {
    name: &'a str,
    shape: &'a [usize],
    data: &'a [S],
}

/// Borrowed view of a [`ParamSet`] with scalars of type `S`.
pub struct ParamView<'a, S> {
    entries: Vec<ViewEntry<'a, S>>,
}

impl<'a, S> ParamView<'a, S> {
    pub fn get(&self, name: &str) -> Result<&'a [S]> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .map(|e| e.data)
            .ok_or_else(|| ChestError::InvalidInput(format!("unknown parameter {name:?}")))
    }

    pub fn shape(&self, name: &str) -> Result<&'a [usize]> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .map(|e| e.shape)
            .ok_or_else(|| ChestError::InvalidInput(format!("unknown parameter {name:?}")))
    }
}

/// Scalar objective over a set of named parameters.
///
/// Implementations must be pure: same parameters, same result. Anything
/// random (batch choice, sampled triplets) is fixed in the implementing
/// struct before evaluation.
pub trait LossFunction {
    fn eval<S: Real>(&self, params: &ParamView<'_, S>) -> Result<S>;
}

/// Loss value plus gradients aligned with the parameter set.
#[derive(Clone, Debug)]
pub struct GradientReport {
    loss: f64,
    grads: Vec<ParamTensor>,
}

impl GradientReport {
    pub fn loss(&self) -> f64 {
        self.loss
    }

    /// Gradient tensors in the same order as the parameter set.
    pub fn grads(&self) -> &[ParamTensor] {
        &self.grads
    }

    pub fn get(&self, name: &str) -> Result<&ParamTensor> {
        self.grads
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| ChestError::InvalidInput(format!("unknown gradient {name:?}")))
    }

    /// True when every gradient entry is finite.
    pub fn finite(&self) -> bool {
        self.grads
            .iter()
            .all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Name of the first gradient tensor with a non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.grads
            .iter()
            .find(|t| t.data.iter().any(|v| !v.is_finite()))
            .map(|t| t.name.as_str())
    }
}

/// Evaluates the loss once on a tape and returns its gradients with respect
/// to every parameter entry.
pub fn backward(loss: &impl LossFunction, params: &ParamSet) -> Result<GradientReport> {
    if params.is_empty() {
        return Err(ChestError::InvalidInput(
            "backward needs at least one parameter tensor".into(),
        ));
    }
    if let Some(name) = params.first_non_finite() {
        return Err(ChestError::NonFinite(format!("parameter {name:?}")));
    }

    let tape = Tape::with_capacity(params.total_len() * 4);
    let lifted: Vec<Vec<crate::tape::Var<'_>>> = params
        .tensors
        .iter()
        .map(|t| t.data.iter().map(|&v| tape.leaf(v)).collect())
        .collect();
    let view = ParamView {
        entries: params
            .tensors
            .iter()
            .zip(&lifted)
            .map(|(t, vars)| ViewEntry {
                name: t.name.as_str(),
                shape: t.shape.as_slice(),
                data: vars.as_slice(),
            })
            .collect(),
    };

    let out = loss.eval(&view)?;
    let loss_value = out.value();
    if !loss_value.is_finite() {
        return Err(ChestError::NonFinite("loss".into()));
    }

    let grads = out.backward();
    let grad_tensors = params
        .tensors
        .iter()
        .zip(&lifted)
        .map(|(t, vars)| ParamTensor {
            name: t.name.clone(),
            shape: t.shape.clone(),
            data: grads.get_all(vars),
        })
        .collect();

    Ok(GradientReport {
        loss: loss_value,
        grads: grad_tensors,
    })
}

/// Settings for [`finite_difference_check`].
#[derive(Clone, Copy, Debug)]
pub struct FdConfig {
    /// Central-difference step.
    pub step: f64,
    /// Maximum allowed relative error per entry.
    pub rel_tolerance: f64,
}

impl Default for FdConfig {
    fn default() -> Self {
        FdConfig {
            step: 1e-5,
            rel_tolerance: 1e-4,
        }
    }
}

/// Worst disagreement for one parameter tensor.
#[derive(Clone, Debug)]
pub struct FdEntry {
    pub name: String,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Outcome of comparing tape gradients against central differences.
#[derive(Clone, Debug)]
pub struct FdReport {
    pub entries: Vec<FdEntry>,
    pub rel_tolerance: f64,
}

impl FdReport {
    pub fn max_rel_error(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.entries
            .iter()
            .all(|e| e.max_rel_error <= self.rel_tolerance)
    }

    pub fn summary(&self) -> String {
        let mut lines = vec![format!(
            "gradient check: {} (max rel error {:.3e}, tolerance {:.1e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.max_rel_error(),
            self.rel_tolerance
        )];
        for e in &self.entries {
            lines.push(format!(
                "  {:<20} max rel {:.3e} at [{}] (analytic {:.6e}, numeric {:.6e})",
                e.name, e.max_rel_error, e.worst_index, e.analytic, e.numeric
            ));
        }
        lines.join("\n")
    }
}

/// Relative error with an absolute floor:
/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compares [`backward`] gradients against central finite differences of the
/// same loss evaluated with plain `f64`.
pub fn finite_difference_check(
    loss: &impl LossFunction,
    params: &ParamSet,
    cfg: &FdConfig,
) -> Result<FdReport> {
    if !(cfg.step.is_finite() && cfg.step > 0.0) {
        return Err(ChestError::InvalidInput(format!(
            "finite-difference step must be positive, got {}",
            cfg.step
        )));
    }
    let analytic = backward(loss, params)?;
    let mut scratch = params.clone();
    let mut entries = Vec::new();

    for tensor in params.tensors() {
        let grad = analytic.get(tensor.name())?;
        let mut worst = FdEntry {
            name: tensor.name().to_string(),
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: grad.data().first().copied().unwrap_or(0.0),
            numeric: 0.0,
        };
        for i in 0..tensor.len() {
            let base = tensor.data()[i];

            scratch.values_mut(tensor.name())?[i] = base + cfg.step;
            let plus = loss.eval(&scratch.view())?;
            scratch.values_mut(tensor.name())?[i] = base - cfg.step;
            let minus = loss.eval(&scratch.view())?;
            scratch.values_mut(tensor.name())?[i] = base;

            let numeric = (plus - minus) / (2.0 * cfg.step);
            let err = relative_error(grad.data()[i], numeric);
            if err > worst.max_rel_error {
                worst.max_rel_error = err;
                worst.worst_index = i;
                worst.analytic = grad.data()[i];
                worst.numeric = numeric;
            }
        }
        entries.push(worst);
    }

    Ok(FdReport {
        entries,
        rel_tolerance: cfg.rel_tolerance,
    })
}
