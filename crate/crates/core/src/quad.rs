//! Quadrature and reduction helpers.

/// Cumulative composite trapezoid on a uniform grid: `out[k]` integrates the
/// samples from node 0 to node k, so `out[0] == 0`.
pub fn cumulative_trapezoid(values: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in values.windows(2) {
        acc += 0.5 * h * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

/// Adaptive Simpson quadrature of a scalar integrand on `[a, b]`.
///
/// Works for `b < a` (returns the signed integral) and for `a == b`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Sum with a fixed pairwise tree shape that depends only on the length.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n if n <= 8 => values.iter().sum(),
        n => {
            let (lo, hi) = values.split_at(n / 2);
            pairwise_sum(lo) + pairwise_sum(hi)
        }
    }
}

/// Measured convergence order `log2(e(h) / e(h/2))` for successive errors
/// under halving; `None` when either error is zero.
pub fn observed_orders(errors: &[f64]) -> Vec<Option<f64>> {
    errors
        .windows(2)
        .map(|w| (w[0] > 0.0 && w[1] > 0.0).then(|| (w[0] / w[1]).log2()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_is_exact_on_linear() {
        let xs: Vec<f64> = (0..=10).map(|k| 0.1 * k as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x + 1.0).collect();
        let c = cumulative_trapezoid(&ys, 0.1);
        assert_eq!(c[0], 0.0);
        assert!((c[10] - 2.5).abs() < 1e-14);
        assert!((c[5] - (1.5 * 0.25 + 0.5)).abs() < 1e-14);
    }

    #[test]
    fn trapezoid_negative_step() {
        let c = cumulative_trapezoid(&[1.0, 1.0, 1.0], -0.5);
        assert_eq!(c, vec![0.0, -0.5, -1.0]);
    }

    #[test]
    fn simpson_matches_closed_form() {
        let v = adaptive_simpson(&|t: f64| t.cos(), 0.0, 1.3, 1e-13);
        assert!((v - 1.3f64.sin()).abs() < 1e-12);
        let r = adaptive_simpson(&|t: f64| t.cos(), 1.3, 0.0, 1e-13);
        assert!((r + 1.3f64.sin()).abs() < 1e-12);
        assert_eq!(adaptive_simpson(&|t: f64| t, 0.7, 0.7, 1e-12), 0.0);
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let v: Vec<f64> = (0..1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&v), 499_500.0);
    }

    #[test]
    fn orders() {
        let o = observed_orders(&[4e-2, 1e-2, 0.0]);
        assert!((o[0].unwrap() - 2.0).abs() < 1e-12);
        assert!(o[1].is_none());
    }
}
