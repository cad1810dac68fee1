//! Finite-difference verification of analytic gradients.
//!
//! The op under test is rebuilt as a fresh graph for every evaluation, its
//! output is scalarized through a fixed random projection, and the analytic
//! gradient of that scalar is compared coordinate by coordinate against
//! central differences with `h = 1e-5 * max(1, |x|)`.

use crate::error::Result;
use crate::graph::{Graph, NodeId};
use crate::rng::StreamRng;
use crate::tensor::Tensor;

/// Pass threshold for ops smooth everywhere.
pub const TOL_SMOOTH: f64 = 1e-5;
/// Pass threshold for ops with kinks, evaluated away from the kink.
pub const TOL_KINKED: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub name: String,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Failure detail when the op itself errored.
    pub note: Option<String>,
}

impl GradCheckReport {
    fn failed(name: &str, tolerance: f64, note: String) -> Self {
        GradCheckReport {
            name: name.to_string(),
            max_rel_err: f64::INFINITY,
            tolerance,
            passed: false,
            note: Some(note),
        }
    }
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1.0)
}

/// Check `build`'s gradients with respect to every entry of `inputs`.
///
/// `build` receives one leaf per input tensor and returns the op output;
/// it must be a pure function of the leaf values (fix any internal RNG).
/// Never panics on op errors; they surface as a failed report.
pub fn gradcheck<F>(
    name: &str,
    inputs: &[Tensor<f64>],
    tolerance: f64,
    build: F,
) -> GradCheckReport
where
    F: Fn(&mut Graph<f64>, &[NodeId]) -> Result<NodeId>,
{
    // Probe for the output shape to fix the scalarization weights.
    let probe = match eval_output_shape(inputs, &build) {
        Ok(shape) => shape,
        Err(e) => return GradCheckReport::failed(name, tolerance, e.to_string()),
    };
    let mut wrng = StreamRng::from_seed(0x9d5c_31f0).stream(&format!("gradcheck/{name}"));
    let weights = Tensor::from_fn(&probe, |_| wrng.uniform_in(-1.0, 1.0));

    let loss_of = |xs: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = xs
            .iter()
            .map(|x| g.input(x.clone()))
            .collect::<Result<_>>()?;
        let y = build(&mut g, &ids)?;
        let loss = if g.value(y).len() == 1 {
            y
        } else {
            g.weighted_sum(y, weights.clone())?
        };
        Ok(g.value(loss).data()[0])
    };

    // Analytic gradients.
    let analytic: Vec<Tensor<f64>> = {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = match inputs.iter().map(|x| g.input(x.clone())).collect() {
            Ok(ids) => ids,
            Err(e) => return GradCheckReport::failed(name, tolerance, e.to_string()),
        };
        let y = match build(&mut g, &ids) {
            Ok(y) => y,
            Err(e) => return GradCheckReport::failed(name, tolerance, e.to_string()),
        };
        let loss = if g.value(y).len() == 1 {
            y
        } else {
            match g.weighted_sum(y, weights.clone()) {
                Ok(l) => l,
                Err(e) => return GradCheckReport::failed(name, tolerance, e.to_string()),
            }
        };
        let mut grads = match g.backward(loss) {
            Ok(gr) => gr,
            Err(e) => return GradCheckReport::failed(name, tolerance, e.to_string()),
        };
        ids.iter()
            .enumerate()
            .map(|(i, &id)| {
                grads
                    .take(id)
                    .unwrap_or_else(|| Tensor::zeros(inputs[i].shape()))
            })
            .collect()
    };

    // Central differences.
    let mut max_err = 0.0f64;
    let mut xs: Vec<Tensor<f64>> = inputs.to_vec();
    for (ti, input) in inputs.iter().enumerate() {
        for j in 0..input.len() {
            let x0 = input.data()[j];
            let h = 1e-5 * x0.abs().max(1.0);
            xs[ti].data_mut()[j] = x0 + h;
            let up = match loss_of(&xs) {
                Ok(v) => v,
                Err(e) => return GradCheckReport::failed(name, tolerance, e.to_string()),
            };
            xs[ti].data_mut()[j] = x0 - h;
            let down = match loss_of(&xs) {
                Ok(v) => v,
                Err(e) => return GradCheckReport::failed(name, tolerance, e.to_string()),
            };
            xs[ti].data_mut()[j] = x0;
            let numeric = (up - down) / (2.0 * h);
            max_err = max_err.max(rel_err(analytic[ti].data()[j], numeric));
        }
    }

    GradCheckReport {
        name: name.to_string(),
        max_rel_err: max_err,
        tolerance,
        passed: max_err < tolerance,
        note: None,
    }
}

fn eval_output_shape<F>(inputs: &[Tensor<f64>], build: &F) -> Result<Vec<usize>>
where
    F: Fn(&mut Graph<f64>, &[NodeId]) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs
        .iter()
        .map(|x| g.input(x.clone()))
        .collect::<Result<_>>()?;
    let y = build(&mut g, &ids)?;
    Ok(g.value(y).shape().to_vec())
}

/// Harness sanity check: run the checker against a deliberately wrong
/// backward (forward `2x`, claimed gradient `3`). The returned report must
/// fail; a harness that lets this pass cannot be trusted.
pub fn harness_sanity_report() -> GradCheckReport {
    let x = Tensor::from_vec(&[4], vec![0.4, -1.1, 0.9, 2.3]).unwrap();
    gradcheck("injected_wrong_backward", &[x], TOL_SMOOTH, |g, ids| {
        g.scale_with_wrong_gradient(ids[0], 2.0, 3.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_the_injected_wrong_backward() {
        let report = harness_sanity_report();
        assert!(!report.passed);
        assert!(report.max_rel_err > 0.3);
    }

    #[test]
    fn flags_a_kink_evaluated_at_the_kink() {
        let at_kink = Tensor::from_vec(&[1], vec![0.0]).unwrap();
        let report = gradcheck("relu_at_kink", &[at_kink], 1e-9, |g, ids| g.relu(ids[0]));
        assert!(!report.passed);
    }

    #[test]
    fn passes_on_smooth_composite() {
        let x = Tensor::from_vec(&[4], vec![0.3, -0.9, 1.7, -0.2]).unwrap();
        let report = gradcheck("swish_of_sum", &[x], TOL_SMOOTH, |g, ids| {
            let y = g.add(ids[0], ids[0])?;
            g.swish(y)
        });
        assert!(report.passed, "max rel err {}", report.max_rel_err);
    }
}
