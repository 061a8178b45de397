//! Central finite-difference gradient checking.
//!
//! The numeric side only evaluates the forward pass (under `no_grad`), so it
//! stays independent of every backward implementation it checks.

use rand::Rng;

use crate::tensor::{no_grad, Tensor};

/// Magnitude floor for relative errors, so exact zeros compare sanely.
pub const REL_ERR_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct GradCheck {
    /// Worst elementwise relative error over all leaves.
    pub max_rel_err: f64,
    /// (leaf, element) of the worst entry.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERR_FLOOR)
}

/// Compares backprop gradients of `f` with central differences of step `h`.
/// `leaves` are copied into fresh trainable leaves before each evaluation.
pub fn gradient_check(
    leaves: &[Tensor],
    h: f64,
    f: impl Fn(&[Tensor]) -> Tensor,
) -> GradCheck {
    let params: Vec<Tensor> = leaves.iter().map(Tensor::to_param).collect();
    let loss = f(&params);
    loss.backward().expect("loss must be a differentiable scalar");
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|p| p.grad_vec().unwrap_or_else(|| vec![0.0; p.len()]))
        .collect();

    let mut report = GradCheck {
        max_rel_err: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    no_grad(|| {
        for (li, leaf) in leaves.iter().enumerate() {
            for e in 0..leaf.len() {
                let eval = |delta: f64| {
                    let mut data = leaf.to_vec();
                    data[e] += delta;
                    let mut shifted: Vec<Tensor> = leaves.to_vec();
                    shifted[li] = Tensor::new(leaf.shape(), data).unwrap();
                    f(&shifted).item()
                };
                let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                let a = analytic[li][e];
                let err = rel_err(a, numeric);
                report.checked += 1;
                if err > report.max_rel_err || !err.is_finite() {
                    report.max_rel_err = err;
                    report.worst = (li, e);
                    report.analytic = a;
                    report.numeric = numeric;
                }
            }
        }
    });
    report
}

/// Panics with a diagnostic when the worst relative error exceeds `tol`.
pub fn check_gradients(leaves: &[Tensor], tol: f64, f: impl Fn(&[Tensor]) -> Tensor) {
    let r = gradient_check(leaves, 1e-5, f);
    assert!(
        r.max_rel_err < tol,
        "gradient mismatch at leaf {} element {}: analytic {} vs numeric {} (rel err {:e})",
        r.worst.0,
        r.worst.1,
        r.analytic,
        r.numeric,
        r.max_rel_err
    );
}

/// Uniform values in `[-amp, amp]`.
pub fn random_tensor(rng: &mut impl Rng, shape: &[usize], amp: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-amp..=amp)).collect();
    Tensor::new(shape, data).unwrap()
}
