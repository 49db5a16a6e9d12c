use super::mlp::MlpBlock;
use super::params::Parameterized;
use crate::error::{Error, Result};

/// Central-difference gradient of `f` at `params`.
pub fn numeric_gradient<F>(mut f: F, params: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `max_i |a_i - n_i| / max(|a_i|, |n_i|, 1e-8)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

/// Compares backpropagated parameter gradients of `0.5 * |block(input)|^2` with central
/// differences and returns the worst relative error.
pub fn finite_difference_check(block: &MlpBlock, input: &[f64], h: f64) -> Result<f64> {
    if h <= 0.0 {
        return Err(Error::Input(format!("step h must be positive, got {h}")));
    }
    let (out, tape) = block.forward(input)?;
    let analytic = block.backward(&tape, &out)?.flat();

    let mut probe = block.clone();
    let params = block.flat_params();
    let mut failure = None;
    let numeric = numeric_gradient(
        |p| {
            if let Err(e) = probe.load_flat_params(p) {
                failure.get_or_insert(e);
                return f64::NAN;
            }
            match probe.forward(input) {
                Ok((y, _)) => 0.5 * y.iter().map(|v| v * v).sum::<f64>(),
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        &params,
        h,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(max_relative_error(&analytic, &numeric))
}
