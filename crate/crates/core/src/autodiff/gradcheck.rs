use super::{Tape, Tensor, TensorError, Var};

/// Worst disagreement between tape gradients and central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (input index, flat coordinate) where the worst error occurred.
    pub worst_at: Option<(usize, usize)>,
    pub coordinates: usize,
}

/// Relative error with the denominator floored at 1e-8.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / f64::max(1e-8, analytic.abs() + numeric.abs())
}

/// Central difference formula used for the numeric side of a check.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stencil {
    /// `(f(x+h) − f(x−h)) / 2h`, error O(h²).
    ThreePoint,
    /// `(f(x−2h) − 8f(x−h) + 8f(x+h) − f(x+2h)) / 12h`, error O(h⁴).
    FivePoint,
}

/// Compares reverse-mode gradients of the scalar program `f` against central
/// differences `(f(x+h) − f(x−h)) / 2h`, coordinate by coordinate over every input.
pub fn grad_check<F>(inputs: &[Tensor], h: f64, f: F) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, TensorError>,
{
    grad_check_with(inputs, h, Stencil::ThreePoint, f)
}

pub fn grad_check_with<F>(inputs: &[Tensor], h: f64, stencil: Stencil, f: F) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, TensorError>,
{
    let eval = |values: &[Tensor]| -> Result<f64, TensorError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_at: None,
        coordinates: 0,
    };
    let mut probe = inputs.to_vec();
    for (idx, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).cloned().unwrap_or_else(|| Tensor::zeros(inputs[idx].shape()));
        for j in 0..inputs[idx].len() {
            let orig = inputs[idx].data()[j];
            let mut at = |offset: f64| -> Result<f64, TensorError> {
                probe[idx].data_mut()[j] = orig + offset;
                let v = eval(&probe);
                probe[idx].data_mut()[j] = orig;
                v
            };
            let numeric = match stencil {
                Stencil::ThreePoint => (at(h)? - at(-h)?) / (2.0 * h),
                // Paired differences cancel exactly when f ignores the coordinate.
                Stencil::FivePoint => {
                    let near = at(h)? - at(-h)?;
                    let far = at(2.0 * h)? - at(-2.0 * h)?;
                    (8.0 * near - far) / (12.0 * h)
                }
            };
            let err = relative_error(analytic.data()[j], numeric);
            report.coordinates += 1;
            if report.worst_at.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_at = Some((idx, j));
            }
        }
    }
    Ok(report)
}
