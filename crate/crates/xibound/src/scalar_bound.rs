//! The bound function `Ξ` and exact Bernoulli divergences.
//!
//! `Ξ` is the strictly increasing map with `Ξ(JSD(p‖q)) ≤ KLD(p‖q)` for every
//! pair of distributions. It has no closed form, but its inverse does:
//!
//! ```text
//! Ξ⁻¹(y) = log 2 − ½[(1 + e⁻ʸ) log(1 + e⁻ʸ) + y e⁻ʸ]
//! ```
//!
//! which equals `JSD(B(1) ‖ B(e⁻ʸ))`. [`xi`] evaluates the forward map by
//! root-finding on [`xi_inverse`].
//!
//! All divergences are in nats. Everything here is a pure function of its
//! arguments.

use crate::error::{Error, Result};

/// `log 2`, the supremum of the Jensen-Shannon divergence.
pub const LN_2: f64 = std::f64::consts::LN_2;

/// Absolute tolerance of the [`xi`] solver, measured in the JSD domain.
pub const XI_SOLVER_TOL: f64 = 1e-12;

const XI_BRACKET_START: f64 = 100.0;
const XI_BRACKET_CAP: f64 = 1e6;
const XI_MAX_ITER: usize = 200;

/// Logit transform `log(p / (1 − p))`.
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `x log(x / y)` with the convention `0 log 0 = 0`.
fn xlog_ratio(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * (x / y).ln()
    }
}

fn check_prob(p: f64, name: &str) -> Result<()> {
    if !p.is_finite() || !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("{name} must lie in [0,1], got {p}")));
    }
    Ok(())
}

/// `KL(B(μ) ‖ B(ν)) = μ log(μ/ν) + (1−μ) log((1−μ)/(1−ν))`.
///
/// Returns `+∞` when `ν ∈ {0, 1}` with `μ ≠ ν`: the divergence is genuinely
/// infinite there and the joint-range boundary needs that value to be
/// representable.
pub fn bernoulli_kl(mu: f64, nu: f64) -> Result<f64> {
    check_prob(mu, "mu")?;
    check_prob(nu, "nu")?;
    if (nu == 0.0 && mu != 0.0) || (nu == 1.0 && mu != 1.0) {
        return Ok(f64::INFINITY);
    }
    if mu == nu {
        return Ok(0.0);
    }
    Ok(xlog_ratio(mu, nu) + xlog_ratio(1.0 - mu, 1.0 - nu))
}

/// `JSD(B(μ) ‖ B(ν))` in closed form. Symmetric, finite on the whole unit
/// square, with range `[0, log 2]`.
pub fn bernoulli_js(mu: f64, nu: f64) -> Result<f64> {
    check_prob(mu, "mu")?;
    check_prob(nu, "nu")?;
    let s = mu + nu;
    let t = 2.0 - s;
    let v = LN_2
        + 0.5 * (xlog_ratio(mu, s) + xlog_ratio(nu, s))
        + 0.5 * (xlog_ratio(1.0 - mu, t) + xlog_ratio(1.0 - nu, t));
    // Roundoff can push the sum a hair outside the mathematical range.
    Ok(v.clamp(0.0, LN_2))
}

/// `Ξ⁻¹(y) = log 2 − ½[(1 + e⁻ʸ) log(1 + e⁻ʸ) + y e⁻ʸ]`.
///
/// Strictly increasing bijection from `[0, ∞)` onto `[0, log 2)`. The true
/// value never reaches `log 2`; when rounding would land exactly on `log 2`
/// the result is nudged to the largest double below it so the stated range
/// holds for the returned value too.
pub fn xi_inverse(y: f64) -> Result<f64> {
    if !y.is_finite() || y < 0.0 {
        return Err(Error::Domain(format!("xi_inverse needs finite y >= 0, got {y}")));
    }
    let z = (-y).exp();
    let v = LN_2 - 0.5 * ((1.0 + z) * z.ln_1p() + y * z);
    if v >= LN_2 {
        Ok(f64::from_bits(LN_2.to_bits() - 1))
    } else {
        Ok(v.max(0.0))
    }
}

/// `(Ξ⁻¹)′(y) = ½ e⁻ʸ log(1 + eʸ)`, strictly positive for `y > 0`.
pub fn xi_inverse_derivative(y: f64) -> Result<f64> {
    if !y.is_finite() || y < 0.0 {
        return Err(Error::Domain(format!(
            "xi_inverse_derivative needs finite y >= 0, got {y}"
        )));
    }
    // log(1 + e^y) = y + log(1 + e^-y) avoids overflow for large y.
    Ok(0.5 * (-y).exp() * (y + (-y).exp().ln_1p()))
}

/// `log 2 − Ξ⁻¹(y)`, computed without the cancellation of subtracting two
/// near-equal numbers. The solver works with this residual.
fn xi_inverse_gap(y: f64) -> f64 {
    let z = (-y).exp();
    0.5 * ((1.0 + z) * z.ln_1p() + y * z)
}

/// `Ξ(x)`: the value `y ≥ 0` with `Ξ⁻¹(y) = x`, found by bracketed
/// root-finding (Brent) plus a Newton polish.
///
/// Domain `[0, log 2)`. The bracket starts at `[0, 100]` and doubles its
/// upper end while `Ξ⁻¹` is still below `x`, capped at `1e6`.
pub fn xi(x: f64) -> Result<f64> {
    if !x.is_finite() || !(0.0..LN_2).contains(&x) {
        return Err(Error::Domain(format!("xi needs x in [0, log 2), got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    // Residual in the x domain: f(y) = (log2 - x) - (log2 - xi_inverse(y)),
    // increasing in y. `w` is the target gap.
    let w = LN_2 - x;
    let f = |y: f64| w - xi_inverse_gap(y);

    let mut hi = XI_BRACKET_START;
    while f(hi) < 0.0 {
        hi *= 2.0;
        if hi > XI_BRACKET_CAP {
            return Err(Error::Convergence(format!(
                "xi bracket expansion exceeded {XI_BRACKET_CAP} for x = {x}"
            )));
        }
    }
    // ftol = 0 disables the residual-based early exit: near x = log 2 the
    // whole tail of the bracket satisfies any absolute residual test, so the
    // solver must instead run the bracket down to machine precision in y.
    // The returned root is always within XI_SOLVER_TOL in the x domain (and
    // far tighter away from log 2).
    let mut y = brent(f, 0.0, hi, 0.0, XI_MAX_ITER)?;

    // Newton refinement pushes the root to the limit the double-precision
    // input allows. Brent already leaves the bracket at machine precision,
    // so only accept steps that actually shrink the residual (near x = log 2
    // the gap underflows and an unguarded step can jump across the plateau).
    let mut r = xi_inverse_gap(y) - w;
    for _ in 0..3 {
        if r == 0.0 {
            break;
        }
        let d = xi_inverse_derivative(y)?;
        if d <= 0.0 {
            break;
        }
        let y_next = (y + r / d).max(0.0);
        if y_next == y {
            break;
        }
        let r_next = xi_inverse_gap(y_next) - w;
        if r_next.abs() >= r.abs() {
            break;
        }
        y = y_next;
        r = r_next;
    }
    Ok(y)
}

/// `Ξ′(x) = 1 / (Ξ⁻¹)′(Ξ(x))` by the inverse function theorem.
/// Defined on the open interval `(0, log 2)`.
pub fn xi_derivative(x: f64) -> Result<f64> {
    if !x.is_finite() || x <= 0.0 || x >= LN_2 {
        return Err(Error::Domain(format!(
            "xi_derivative needs x in (0, log 2), got {x}"
        )));
    }
    let y = xi(x)?;
    Ok(1.0 / xi_inverse_derivative(y)?)
}

/// Differentiable logit approximation `Ξ(x) ≈ 1.15 · logit(½(x / log 2 + 1))`.
///
/// The 1.15 scale is a fixed constant, not refitted.
pub fn xi_approx(x: f64) -> Result<f64> {
    if !x.is_finite() || !(0.0..LN_2).contains(&x) {
        return Err(Error::Domain(format!("xi_approx needs x in [0, log 2), got {x}")));
    }
    Ok(1.15 * logit(0.5 * (x / LN_2 + 1.0)))
}

/// First-order estimate `δ · Ξ′` of the gap between the optimal JSD bound and
/// the cross-entropy bound, evaluated at the point whose `Ξ`-image is `i_ce`.
///
/// Since `Ξ(x) = i_ce` means `x = Ξ⁻¹(i_ce)`, the slope there is
/// `1 / (Ξ⁻¹)′(i_ce)` and no root-finding is needed.
pub fn ce_gap_estimate(i_ce: f64, delta: f64) -> Result<f64> {
    if !i_ce.is_finite() || i_ce < 0.0 {
        return Err(Error::Domain(format!(
            "ce_gap_estimate needs i_ce in the range of xi (>= 0), got {i_ce}"
        )));
    }
    if !delta.is_finite() || delta < 0.0 {
        return Err(Error::Domain(format!("delta must be >= 0, got {delta}")));
    }
    if delta == 0.0 {
        return Ok(0.0);
    }
    Ok(delta / xi_inverse_derivative(i_ce)?)
}

/// Brent's method on `[a, b]` for an increasing residual `f` with
/// `f(a) ≤ 0 ≤ f(b)`. Stops when `|f| ≤ ftol`.
fn brent<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, ftol: f64, max_iter: usize) -> Result<f64> {
    let (mut a, mut b) = (a, b);
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa * fb > 0.0 {
        return Err(Error::Convergence(format!(
            "root not bracketed: f({a}) = {fa}, f({b}) = {fb}"
        )));
    }
    if fa.abs() < fb.abs() {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut mflag = true;

    for _ in 0..max_iter {
        if fb.abs() <= ftol {
            return Ok(b);
        }
        let mut s = if fa != fc && fb != fc {
            // inverse quadratic interpolation
            a * fb * fc / ((fa - fb) * (fa - fc))
                + b * fa * fc / ((fb - fa) * (fb - fc))
                + c * fa * fb / ((fc - fa) * (fc - fb))
        } else {
            // secant
            b - fb * (b - a) / (fb - fa)
        };

        let lo = (3.0 * a + b) / 4.0;
        let between = (lo.min(b)..=lo.max(b)).contains(&s);
        let cond_step = if mflag {
            (s - b).abs() >= (b - c).abs() / 2.0
        } else {
            (s - b).abs() >= (c - d).abs() / 2.0
        };
        if !between || cond_step || (mflag && (b - c).abs() < f64::EPSILON)
            || (!mflag && (c - d).abs() < f64::EPSILON)
        {
            s = 0.5 * (a + b);
            mflag = true;
        } else {
            mflag = false;
        }

        let fs = f(s);
        d = c;
        c = b;
        fc = fb;
        if fa * fs < 0.0 {
            b = s;
            fb = fs;
        } else {
            a = s;
            fa = fs;
        }
        if fa.abs() < fb.abs() {
            std::mem::swap(&mut a, &mut b);
            std::mem::swap(&mut fa, &mut fb);
        }
        if (b - a).abs() <= f64::EPSILON * b.abs().max(1.0) {
            return Ok(b);
        }
    }
    Err(Error::Convergence(format!(
        "Brent did not reach |f| <= {ftol} in {max_iter} iterations"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TIGHT: f64 = 1e-12;

    #[test]
    fn kl_identical_is_zero() {
        assert_eq!(bernoulli_kl(0.5, 0.5).unwrap(), 0.0);
        assert_eq!(bernoulli_kl(0.0, 0.0).unwrap(), 0.0);
        assert_eq!(bernoulli_kl(1.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn kl_right_edge_is_minus_log_nu() {
        // KL(B(1) || B(e^-2)) = 2
        let v = bernoulli_kl(1.0, (-2.0f64).exp()).unwrap();
        assert!((v - 2.0).abs() < TIGHT, "{v}");
    }

    #[test]
    fn kl_closed_form_example() {
        // (0.75, 0.25) -> 0.5 log 3
        let v = bernoulli_kl(0.75, 0.25).unwrap();
        assert!((v - 0.5 * 3.0f64.ln()).abs() < TIGHT);
    }

    #[test]
    fn kl_infinite_on_lower_edge() {
        assert_eq!(bernoulli_kl(0.5, 0.0).unwrap(), f64::INFINITY);
        assert_eq!(bernoulli_kl(0.5, 1.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn kl_rejects_bad_params() {
        assert!(bernoulli_kl(-0.1, 0.5).is_err());
        assert!(bernoulli_kl(0.5, 1.5).is_err());
        assert!(bernoulli_kl(f64::NAN, 0.5).is_err());
    }

    #[test]
    fn js_identical_is_zero() {
        assert_eq!(bernoulli_js(0.3, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn js_right_edge_half() {
        // JSD(B(1) || B(0.5)), frozen from the closed form evaluated in
        // extended precision.
        let v = bernoulli_js(1.0, 0.5).unwrap();
        assert!((v - 0.215_761_554_338_835_7).abs() < TIGHT, "{v}");
    }

    #[test]
    fn js_disjoint_supports_saturate() {
        let v = bernoulli_js(1.0, 0.0).unwrap();
        assert!((v - LN_2).abs() < TIGHT);
    }

    #[test]
    fn js_symmetric() {
        for (mu, nu) in [(0.9, 0.1), (0.7, 0.3), (1.0, 0.4), (0.6, 0.0)] {
            let a = bernoulli_js(mu, nu).unwrap();
            let b = bernoulli_js(nu, mu).unwrap();
            assert!((a - b).abs() < TIGHT);
        }
    }

    #[test]
    fn xi_inverse_at_zero() {
        assert_eq!(xi_inverse(0.0).unwrap(), 0.0);
    }

    #[test]
    fn xi_inverse_frozen_values() {
        // Frozen from the closed form in extended precision.
        let a = xi_inverse(LN_2).unwrap();
        assert!((a - 0.215_761_554_338_835_7).abs() < TIGHT, "{a}");
        let b = xi_inverse(4.0f64.ln()).unwrap();
        assert!((b - 0.380_395_665_848_577_9).abs() < TIGHT, "{b}");
    }

    #[test]
    fn xi_inverse_matches_right_edge_js() {
        // xi_inverse(-log nu) = JSD(B(1) || B(nu))
        let mut nu: f64 = 0.001;
        while nu <= 1.0 {
            let lhs = xi_inverse(-nu.ln()).unwrap();
            let rhs = bernoulli_js(1.0, nu).unwrap();
            assert!((lhs - rhs).abs() < TIGHT, "nu = {nu}: {lhs} vs {rhs}");
            nu += 0.0137;
        }
    }

    #[test]
    fn xi_inverse_rejects_negative() {
        assert!(xi_inverse(-1.0).is_err());
        assert!(xi_inverse(f64::INFINITY).is_err());
    }

    #[test]
    fn xi_inverse_stays_below_log2() {
        for y in [10.0, 40.0, 100.0, 1e4] {
            assert!(xi_inverse(y).unwrap() < LN_2);
        }
    }

    #[test]
    fn xi_at_zero() {
        assert_eq!(xi(0.0).unwrap(), 0.0);
    }

    #[test]
    fn xi_inverts_frozen_values() {
        let y = xi(0.215_761_554_338_835_7).unwrap();
        assert!((y - LN_2).abs() < 1e-11, "{y}");
        let y = xi(0.380_395_665_848_577_9).unwrap();
        assert!((y - 4.0f64.ln()).abs() < 1e-11, "{y}");
    }

    #[test]
    fn xi_domain_errors() {
        assert!(xi(-0.1).is_err());
        assert!(xi(LN_2).is_err());
        assert!(xi(1.0).is_err());
    }

    #[test]
    fn xi_round_trip_moderate_range() {
        let mut y = 0.0;
        while y <= 15.0 {
            let x = xi_inverse(y).unwrap();
            let back = xi(x).unwrap();
            assert!((back - y).abs() < 1e-9, "y = {y}, back = {back}");
            y += 0.0173;
        }
    }

    #[test]
    fn xi_inverse_derivative_values() {
        let v = xi_inverse_derivative(0.0).unwrap();
        assert!((v - 0.5 * LN_2).abs() < TIGHT);
        // 1/2 e^-1 log(1+e), frozen in extended precision.
        let v = xi_inverse_derivative(1.0).unwrap();
        assert!((v - 0.241_560_987_858_034_56).abs() < TIGHT, "{v}");
        assert!(xi_inverse_derivative(-0.5).is_err());
    }

    #[test]
    fn xi_inverse_derivative_finite_difference() {
        let h = 1e-6;
        for y in [0.3, 1.0, 2.5, 7.0] {
            let fd = (xi_inverse(y + h).unwrap() - xi_inverse(y - h).unwrap()) / (2.0 * h);
            let an = xi_inverse_derivative(y).unwrap();
            assert!((fd - an).abs() < 1e-6, "y = {y}");
        }
    }

    #[test]
    fn xi_derivative_reciprocal() {
        // At x = xi_inverse(1), the slope is 1 / (Xi^-1)'(1).
        let x = xi_inverse(1.0).unwrap();
        let v = xi_derivative(x).unwrap();
        assert!((v - 1.0 / 0.241_560_987_858_034_56).abs() < 1e-9, "{v}");
    }

    #[test]
    fn xi_derivative_limit_at_origin() {
        // x -> 0+ tends to 1 / (1/2 log 2)
        let v = xi_derivative(1e-9).unwrap();
        assert!((v - 1.0 / (0.5 * LN_2)).abs() < 1e-6, "{v}");
        assert!(xi_derivative(0.0).is_err());
        assert!(xi_derivative(LN_2).is_err());
    }

    #[test]
    fn chain_rule_product() {
        let mut y = 0.1;
        while y <= 15.0 {
            let x = xi_inverse(y).unwrap();
            let p = xi_derivative(x).unwrap() * xi_inverse_derivative(y).unwrap();
            assert!((p - 1.0).abs() < 1e-9, "y = {y}, product = {p}");
            y += 0.231;
        }
    }

    #[test]
    fn xi_approx_values() {
        assert_eq!(xi_approx(0.0).unwrap(), 0.0);
        let v = xi_approx(LN_2 / 2.0).unwrap();
        assert!((v - 1.15 * 3.0f64.ln()).abs() < TIGHT);
        assert!(xi_approx(LN_2).is_err());
        assert!(xi_approx(-0.01).is_err());
    }

    #[test]
    fn xi_approx_median_error_regression() {
        // Median relative error of the logit approximation against the solver
        // on the grid x in {0.01, ..., 0.68}. Recorded constant: 0.03218.
        let mut errs: Vec<f64> = (1..=68)
            .map(|i| {
                let x = i as f64 / 100.0;
                let exact = xi(x).unwrap();
                (xi_approx(x).unwrap() - exact).abs() / exact
            })
            .collect();
        errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let med = 0.5 * (errs[33] + errs[34]);
        assert!((med - 0.032_178).abs() < 1e-4, "median = {med}");
    }

    #[test]
    fn ce_gap_examples() {
        assert_eq!(ce_gap_estimate(0.37, 0.0).unwrap(), 0.0);
        // i_ce = 1 (the Xi-image of xi_inverse(1)); gap = delta * Xi'(x).
        let g = ce_gap_estimate(1.0, 1e-3).unwrap();
        assert!((g - 1e-3 / 0.241_560_987_858_034_56).abs() < 1e-12, "{g}");
        assert!(ce_gap_estimate(-0.5, 1e-3).is_err());
    }

    #[test]
    fn monotone_on_grids() {
        let mut prev = -1.0;
        for i in 0..=1000 {
            let y = 20.0 * i as f64 / 1000.0;
            let v = xi_inverse(y).unwrap();
            assert!(v > prev, "xi_inverse not strictly increasing at y = {y}");
            prev = v;
        }
        let mut prev = -1.0;
        for i in 0..=500 {
            let x = 0.67 * i as f64 / 500.0;
            let v = xi(x).unwrap();
            assert!(v > prev || (i == 0 && v == 0.0), "xi not increasing at x = {x}");
            prev = v;
        }
    }
}
