use super::{Array, Tape, TensorError, Var};

/// Smallest magnitude used as the denominator of a relative error.
const REL_FLOOR: f64 = 1e-6;

/// Per-parameter outcome of [`grad_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub index: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Coordinates whose central difference straddled a ReLU kink and
    /// disagreed with the analytic gradient.
    pub kink_skipped: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    /// Set when the loss (or a perturbed loss) was not finite.
    pub non_finite: Option<String>,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().fold(0.0, |m, p| m.max(p.max_rel_error))
    }

    pub fn kink_skipped(&self) -> usize {
        self.params.iter().map(|p| p.kink_skipped).sum()
    }
}

/// Compares analytic gradients with central finite differences.
///
/// `f` builds a scalar loss from one tape leaf per entry of `params`.
/// Relative error for a coordinate is
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-6)`.
pub fn grad_check<F, E>(f: F, params: &[Array], step: f64, tol: f64) -> Result<GradCheckReport, TensorError>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, E>,
    E: std::fmt::Display,
{
    grad_check_on(Tape::new, f, params, step, tol)
}

/// [`grad_check`] with a caller-supplied tape constructor.
pub fn grad_check_on<F, E>(
    make_tape: impl Fn() -> Tape,
    f: F,
    params: &[Array],
    step: f64,
    tol: f64,
) -> Result<GradCheckReport, TensorError>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, E>,
    E: std::fmt::Display,
{
    if !(step > 0.0 && step <= 1e-2) {
        return Err(TensorError::InvalidArgument {
            op: "grad_check",
            detail: format!("step {step} outside (0, 1e-2]"),
        });
    }
    let failed = |msg: String| GradCheckReport {
        params: Vec::new(),
        non_finite: Some(msg),
        passed: false,
    };

    let analytic: Vec<Array> = {
        let tape = make_tape();
        let vars: Vec<Var<'_>> = params.iter().map(|p| tape.param(p.clone())).collect();
        let loss = match f(&tape, &vars) {
            Ok(l) => l,
            Err(e) => return Ok(failed(format!("loss evaluation failed: {e}"))),
        };
        let value = loss.item();
        if !value.is_finite() {
            return Ok(failed(format!("loss is {value}")));
        }
        let mut grads = tape.backward(loss)?;
        vars.iter()
            .map(|&v| grads.take(v).expect("trainable leaf"))
            .collect()
    };

    let eval = |probe: &[Array]| -> Result<(f64, Vec<bool>), String> {
        let tape = make_tape();
        let vars: Vec<Var<'_>> = probe.iter().map(|p| tape.constant(p.clone())).collect();
        let loss = f(&tape, &vars).map_err(|e| e.to_string())?;
        let v = loss.item();
        Ok((v, tape.relu_signature()))
    };

    let mut probe: Vec<Array> = params.to_vec();
    let mut checks = Vec::with_capacity(params.len());
    for (index, grad) in analytic.iter().enumerate() {
        let mut check = ParamCheck {
            index,
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            kink_skipped: 0,
            passed: true,
        };
        for c in 0..params[index].len() {
            let original = params[index].data()[c];
            probe[index].data_mut()[c] = original + step;
            let plus = eval(&probe);
            probe[index].data_mut()[c] = original - step;
            let minus = eval(&probe);
            probe[index].data_mut()[c] = original;
            let ((lp, sp), (lm, sm)) = match (plus, minus) {
                (Ok(p), Ok(m)) => (p, m),
                (Err(e), _) | (_, Err(e)) => return Ok(failed(e)),
            };
            if !lp.is_finite() || !lm.is_finite() {
                return Ok(failed(format!(
                    "perturbed loss not finite at param {index} coord {c}"
                )));
            }
            let numeric = (lp - lm) / (2.0 * step);
            let a = grad.data()[c];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(REL_FLOOR);
            if rel > tol && sp != sm {
                check.kink_skipped += 1;
                continue;
            }
            check.max_abs_error = check.max_abs_error.max(abs);
            check.max_rel_error = check.max_rel_error.max(rel);
            if rel > tol {
                check.passed = false;
            }
        }
        checks.push(check);
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(GradCheckReport {
        params: checks,
        non_finite: None,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_passes_tight_tolerance() {
        let x = Array::from_vec(vec![0.3, -1.2, 2.5]);
        let report = grad_check(
            |_, v: &[Var<'_>]| -> Result<_, TensorError> { Ok(v[0].square().sum().scale(0.5)) },
            &[x],
            1e-4,
            1e-6,
        )
        .unwrap();
        assert!(report.passed, "{report:?}");
        assert_eq!(report.kink_skipped(), 0);
    }

    #[test]
    fn relu_kink_at_zero_is_skipped_not_failed() {
        let x = Array::from_vec(vec![0.0, 1.0]);
        let report = grad_check(
            |_, v: &[Var<'_>]| -> Result<_, TensorError> { Ok(v[0].relu().sum()) },
            &[x],
            1e-5,
            1e-6,
        )
        .unwrap();
        assert!(report.passed);
        assert_eq!(report.params[0].kink_skipped, 1);
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let x = Array::from_vec(vec![800.0]);
        let report = grad_check(
            |_, v: &[Var<'_>]| -> Result<_, TensorError> { Ok(v[0].exp().sum()) },
            &[x],
            1e-5,
            1e-6,
        )
        .unwrap();
        assert!(!report.passed);
        assert!(report.non_finite.is_some());
    }

    #[test]
    fn rejects_bad_step() {
        let x = Array::from_vec(vec![1.0]);
        fn f<'t>(_: &'t Tape, v: &[Var<'t>]) -> Result<Var<'t>, TensorError> {
            Ok(v[0].sum())
        }
        assert!(grad_check(f, std::slice::from_ref(&x), 0.0, 1e-6).is_err());
        assert!(grad_check(f, &[x], 0.1, 1e-6).is_err());
    }

    #[test]
    fn corrupted_exp_vjp_is_detected() {
        let x = Array::from_vec(vec![0.2, -0.4]);
        let report = grad_check_on(
            Tape::with_corrupted_exp_vjp,
            |_, v: &[Var<'_>]| -> Result<_, TensorError> { Ok(v[0].exp().sum()) },
            &[x],
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(!report.passed);
    }
}
