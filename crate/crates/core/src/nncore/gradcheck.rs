//! Central finite-difference gradient checking against autodiff.

use super::layers::ParamSet;
use ndarray::Array2;
use std::collections::BTreeMap;

pub const GRAD_CHECK_STEP: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter and flat element index where the worst error occurred.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

/// Compares `grads(params)` against central differences of `loss` with
/// h = 1e-5. Relative error uses a 1e-6 denominator floor so near-zero
/// gradients are compared absolutely.
pub fn grad_check<L, G>(loss: L, grads: G, params: &ParamSet, tolerance: f64) -> GradCheckReport
where
    L: Fn(&ParamSet) -> f64,
    G: Fn(&ParamSet) -> BTreeMap<String, Array2<f64>>,
{
    let analytic = grads(params);
    let mut max_rel_error = 0.0_f64;
    let mut worst = None;
    let mut checked = 0usize;
    for (name, grad) in &analytic {
        let base = params
            .get(name)
            .unwrap_or_else(|_| panic!("gradient for unknown parameter '{name}'"));
        assert_eq!(base.dim(), grad.dim(), "gradient shape mismatch for '{name}'");
        for idx in 0..base.len() {
            let (r, c) = (idx / base.ncols(), idx % base.ncols());
            let mut plus = params.clone();
            plus.get_mut(name).unwrap()[[r, c]] += GRAD_CHECK_STEP;
            let mut minus = params.clone();
            minus.get_mut(name).unwrap()[[r, c]] -= GRAD_CHECK_STEP;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * GRAD_CHECK_STEP);
            let ad = grad[[r, c]];
            let rel = (ad - fd).abs() / ad.abs().max(fd.abs()).max(1e-6);
            if rel > max_rel_error {
                max_rel_error = rel;
                worst = Some((name.clone(), idx));
            }
            checked += 1;
        }
    }
    GradCheckReport {
        max_rel_error,
        worst,
        checked,
        tolerance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic_params() -> ParamSet {
        let mut p = ParamSet::new();
        p.insert(
            "w",
            Array2::from_shape_vec((2, 2), vec![0.5, -1.0, 2.0, 0.25]).unwrap(),
        );
        p
    }

    fn quadratic_loss(p: &ParamSet) -> f64 {
        p.get("w").unwrap().iter().map(|v| v * v).sum()
    }

    fn quadratic_grads(p: &ParamSet) -> BTreeMap<String, Array2<f64>> {
        let mut out = BTreeMap::new();
        out.insert("w".to_string(), p.get("w").unwrap().mapv(|v| 2.0 * v));
        out
    }

    #[test]
    fn quadratic_is_exact() {
        let params = quadratic_params();
        let report = grad_check(quadratic_loss, quadratic_grads, &params, 1e-9);
        assert!(report.passed(), "max rel error {}", report.max_rel_error);
        assert_eq!(report.checked, 4);
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let params = quadratic_params();
        let bad_grads = |p: &ParamSet| {
            let mut g = quadratic_grads(p);
            g.get_mut("w").unwrap()[[0, 1]] += 0.5;
            g
        };
        let report = grad_check(quadratic_loss, bad_grads, &params, 1e-4);
        assert!(!report.passed());
        assert_eq!(report.worst.as_ref().unwrap().0, "w");
        assert_eq!(report.worst.as_ref().unwrap().1, 1);
    }
}
