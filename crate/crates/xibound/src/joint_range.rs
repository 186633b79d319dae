//! The Bernoulli joint-range map `φ(μ,ν) = (JSD, KLD)` on the lower triangle
//! `Ω = {(μ,ν) ∈ [0,1]×(0,1] : ν ≤ μ}`, its Jacobian, grid certification that
//! the Jacobian determinant is negative on the interior, and sampling of the
//! lower-envelope boundary curve.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar_bound::{bernoulli_js, bernoulli_kl, logit, xi_inverse};

/// A `(μ, ν)` parameter pair in the lower triangle `Ω`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BernoulliPoint {
    mu: f64,
    nu: f64,
}

impl BernoulliPoint {
    /// A point of `Ω`: `μ ∈ [0,1]`, `ν ∈ (0,1]`, `ν ≤ μ`.
    pub fn new(mu: f64, nu: f64) -> Result<Self> {
        if !(mu.is_finite() && nu.is_finite() && (0.0..=1.0).contains(&mu) && nu > 0.0 && nu <= 1.0 && nu <= mu)
        {
            return Err(Error::Domain(format!(
                "({mu}, {nu}) is not in the lower triangle [0,1]x(0,1], nu <= mu"
            )));
        }
        Ok(Self { mu, nu })
    }

    /// An interior point: `0 < ν < μ < 1`.
    pub fn interior(mu: f64, nu: f64) -> Result<Self> {
        if !(mu.is_finite() && nu.is_finite() && 0.0 < nu && nu < mu && mu < 1.0) {
            return Err(Error::Domain(format!(
                "({mu}, {nu}) is not in the open triangle 0 < nu < mu < 1"
            )));
        }
        Ok(Self { mu, nu })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    fn is_interior(&self) -> bool {
        0.0 < self.nu && self.nu < self.mu && self.mu < 1.0
    }
}

/// A `(JSD, KLD)` pair; the image of one distribution pair under `φ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundValue {
    /// Jensen-Shannon divergence, in `[0, log 2)`.
    pub jsd: f64,
    /// Kullback-Leibler divergence, in `[0, +∞]`.
    pub kld: f64,
}

/// The four partials of `φ` and their determinant at one interior point.
#[derive(Debug, Clone, Copy)]
pub struct JacobianEval {
    pub djs_dmu: f64,
    pub djs_dnu: f64,
    pub dkl_dmu: f64,
    pub dkl_dnu: f64,
    pub det: f64,
}

/// `φ(μ,ν) = (JSD(B(μ)‖B(ν)), KLD(B(μ)‖B(ν)))`. The KL component is `+∞` on
/// the `ν → 0` edge.
pub fn phi(p: &BernoulliPoint) -> BoundValue {
    // Parameters are validated by the BernoulliPoint constructor.
    BoundValue {
        jsd: bernoulli_js(p.mu, p.nu).expect("valid point"),
        kld: bernoulli_kl(p.mu, p.nu).expect("valid point"),
    }
}

/// Closed-form Jacobian of `φ` at an interior point:
///
/// ```text
/// ∂j/∂μ = ½[L(μ) − L(m)]    ∂j/∂ν = ½[L(ν) − L(m)]
/// ∂k/∂μ = L(μ) − L(ν)       ∂k/∂ν = −[μ/ν − (1−μ)/(1−ν)]
/// ```
///
/// with `m = (μ+ν)/2` and `L` the logit.
pub fn jacobian(p: &BernoulliPoint) -> Result<JacobianEval> {
    if !p.is_interior() {
        return Err(Error::Domain(format!(
            "jacobian needs an interior point, got ({}, {})",
            p.mu, p.nu
        )));
    }
    let (mu, nu) = (p.mu, p.nu);
    let m = 0.5 * (mu + nu);
    let djs_dmu = 0.5 * (logit(mu) - logit(m));
    let djs_dnu = 0.5 * (logit(nu) - logit(m));
    let dkl_dmu = logit(mu) - logit(nu);
    let dkl_dnu = -(mu / nu - (1.0 - mu) / (1.0 - nu));
    let det = djs_dmu * dkl_dnu - djs_dnu * dkl_dmu;
    Ok(JacobianEval {
        djs_dmu,
        djs_dnu,
        dkl_dmu,
        dkl_dnu,
        det,
    })
}

/// Outcome of a grid certification run.
#[derive(Debug, Clone)]
pub struct CertificationReport {
    /// Number of interior grid points evaluated.
    pub checked: usize,
    /// Largest determinant observed (negative everywhere iff the conjecture
    /// holds on the grid).
    pub max_det: f64,
    /// Location of `max_det`.
    pub max_det_at: (f64, f64),
    /// Points where `det >= -margin`, as `(mu, nu, det)` rows.
    pub failures: Vec<(f64, f64, f64)>,
    /// Margin the run was asked to certify.
    pub margin: f64,
    /// `true` iff `max_det < -margin`.
    pub pass: bool,
}

/// Evaluates the Jacobian determinant on a uniform interior grid of `Ω` and
/// reports whether it stays below `-margin` everywhere.
///
/// Grid points are cell centers `((i + ½)/N, (j + ½)/N)` with `j < i`, which
/// keeps every point at distance at least `1/(2N)` from the boundary of the
/// unit square and `1/N` from the diagonal, where the determinant vanishes.
/// This is numerical evidence on the sampled grid, not a proof.
pub fn certify_conjecture(grid_per_axis: usize, margin: f64) -> Result<CertificationReport> {
    if grid_per_axis < 2 {
        return Err(Error::Domain(format!(
            "grid_per_axis must be >= 2, got {grid_per_axis}"
        )));
    }
    if !(margin.is_finite() && margin >= 0.0) {
        return Err(Error::Domain(format!("margin must be finite and >= 0, got {margin}")));
    }
    let n = grid_per_axis;
    let evals: Vec<(f64, f64, f64)> = (1..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mu = (i as f64 + 0.5) / n as f64;
            (0..i).map(move |j| {
                let nu = (j as f64 + 0.5) / n as f64;
                let p = BernoulliPoint { mu, nu };
                let det = jacobian(&p).expect("cell centers are interior").det;
                (mu, nu, det)
            })
        })
        .collect();

    let mut max_det = f64::NEG_INFINITY;
    let mut max_det_at = (f64::NAN, f64::NAN);
    let mut failures = Vec::new();
    for &(mu, nu, det) in &evals {
        if det > max_det {
            max_det = det;
            max_det_at = (mu, nu);
        }
        if det >= -margin {
            failures.push((mu, nu, det));
        }
    }
    Ok(CertificationReport {
        checked: evals.len(),
        max_det,
        max_det_at,
        failures,
        margin,
        pass: max_det < -margin,
    })
}

/// `n` samples of the lower-envelope curve `(Ξ⁻¹(y), y)`, with `y` log-spaced
/// in `[1e-4, 50]`. Log spacing resolves both the origin end and the
/// compression toward `jsd = log 2`.
pub fn boundary_curve(n: usize) -> Result<Vec<BoundValue>> {
    if n < 2 {
        return Err(Error::Domain(format!("boundary_curve needs n >= 2, got {n}")));
    }
    let (lo, hi) = (1e-4f64, 50.0f64);
    let step = (hi / lo).ln() / (n - 1) as f64;
    (0..n)
        .map(|i| {
            let y = lo * (step * i as f64).exp();
            Ok(BoundValue {
                jsd: xi_inverse(y)?,
                kld: y,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar_bound::{xi, LN_2};

    #[test]
    fn phi_diagonal_maps_to_origin() {
        for mu in [0.1, 0.5, 0.9] {
            let v = phi(&BernoulliPoint::new(mu, mu).unwrap());
            assert!(v.jsd.abs() < 1e-15);
            assert!(v.kld.abs() < 1e-15);
        }
    }

    #[test]
    fn phi_right_edge_point() {
        let v = phi(&BernoulliPoint::new(1.0, 0.5).unwrap());
        assert!((v.jsd - 0.215_761_554_338_835_7).abs() < 1e-12);
        assert!((v.kld - LN_2).abs() < 1e-12);
    }

    #[test]
    fn phi_lower_edge_kl_blows_up() {
        // kl ≈ mu·ln(mu/nu) = 0.5·ln(0.5e300) ≈ 345
        let v = phi(&BernoulliPoint::new(0.5, 1e-300).unwrap());
        assert!(v.jsd.is_finite());
        assert!(v.kld > 300.0);
    }

    #[test]
    fn point_constructors_enforce_triangle() {
        assert!(BernoulliPoint::new(0.3, 0.5).is_err());
        assert!(BernoulliPoint::new(0.5, 0.0).is_err());
        assert!(BernoulliPoint::interior(1.0, 0.5).is_err());
        assert!(BernoulliPoint::interior(0.5, 0.5).is_err());
        assert!(BernoulliPoint::new(0.5, 0.5).is_ok());
    }

    #[test]
    fn jacobian_closed_form_example() {
        // (0.75, 0.25): entries (log3/2, -log3/2, 2 log3, -8/3),
        // det frozen from extended-precision evaluation.
        let j = jacobian(&BernoulliPoint::interior(0.75, 0.25).unwrap()).unwrap();
        let l3 = 3.0f64.ln();
        assert!((j.djs_dmu - 0.5 * l3).abs() < 1e-12);
        assert!((j.djs_dnu + 0.5 * l3).abs() < 1e-12);
        assert!((j.dkl_dmu - 2.0 * l3).abs() < 1e-12);
        assert!((j.dkl_dnu + 8.0 / 3.0).abs() < 1e-12);
        assert!((j.det - (-0.257_867_424_078_230_94)).abs() < 1e-12, "{}", j.det);
    }

    #[test]
    fn jacobian_rejects_boundary() {
        assert!(BernoulliPoint::new(1.0, 0.5).map(|p| jacobian(&p)).unwrap().is_err());
    }

    #[test]
    fn jacobian_det_vanishes_toward_diagonal() {
        let mut prev = f64::NEG_INFINITY;
        for eps in [0.1, 0.01, 0.001, 0.0001] {
            let j = jacobian(&BernoulliPoint::interior(0.5, 0.5 - eps).unwrap()).unwrap();
            assert!(j.det < 0.0);
            assert!(j.det > prev, "det should shrink toward the diagonal");
            prev = j.det;
        }
        assert!(prev.abs() < 1e-3);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let h = 1e-6;
        let f = |mu: f64, nu: f64| {
            let p = BernoulliPoint::interior(mu, nu).unwrap();
            let v = phi(&p);
            (v.jsd, v.kld)
        };
        for &(mu, nu) in &[(0.7, 0.2), (0.9, 0.6), (0.4, 0.1), (0.55, 0.45)] {
            let j = jacobian(&BernoulliPoint::interior(mu, nu).unwrap()).unwrap();
            let (js_p, kl_p) = f(mu + h, nu);
            let (js_m, kl_m) = f(mu - h, nu);
            assert!(((js_p - js_m) / (2.0 * h) - j.djs_dmu).abs() < 1e-5);
            assert!(((kl_p - kl_m) / (2.0 * h) - j.dkl_dmu).abs() < 1e-5);
            let (js_p, kl_p) = f(mu, nu + h);
            let (js_m, kl_m) = f(mu, nu - h);
            assert!(((js_p - js_m) / (2.0 * h) - j.djs_dnu).abs() < 1e-5);
            assert!(((kl_p - kl_m) / (2.0 * h) - j.dkl_dnu).abs() < 1e-5);
        }
    }

    #[test]
    fn phi_symmetry_under_complement() {
        for &(mu, nu) in &[(0.8, 0.3), (0.9, 0.45), (0.6, 0.2)] {
            let a = phi(&BernoulliPoint::new(mu, nu).unwrap());
            // (1-mu, 1-nu) lands in the upper triangle; evaluate divergences directly.
            let js = bernoulli_js(1.0 - mu, 1.0 - nu).unwrap();
            let kl = bernoulli_kl(1.0 - mu, 1.0 - nu).unwrap();
            assert!((a.jsd - js).abs() < 1e-12);
            assert!((a.kld - kl).abs() < 1e-12);
        }
    }

    #[test]
    fn certify_small_grid() {
        let r = certify_conjecture(50, 0.0).unwrap();
        assert!(r.pass, "max det = {}", r.max_det);
        assert!(r.max_det < 0.0);
        assert_eq!(r.checked, 50 * 49 / 2);
        assert!(r.failures.is_empty());
    }

    #[test]
    fn certify_degenerate_grid() {
        let r = certify_conjecture(2, 0.0).unwrap();
        assert!(r.checked >= 1);
        assert!(r.pass);
        assert!(certify_conjecture(1, 0.0).is_err());
    }

    #[test]
    fn certify_excessive_margin_reports_failures() {
        let r = certify_conjecture(10, 10.0).unwrap();
        assert!(!r.pass);
        assert!(!r.failures.is_empty());
        assert!(r.failures.len() <= r.checked);
    }

    #[test]
    fn boundary_curve_shape() {
        let c = boundary_curve(100).unwrap();
        assert_eq!(c.len(), 100);
        // near the origin at the low end
        assert!(c[0].jsd < 1e-4 && c[0].kld == 1e-4);
        // kld strictly increasing; jsd non-decreasing (it saturates at the
        // largest double below log 2 once y outruns f64 resolution)
        for w in c.windows(2) {
            assert!(w[1].jsd >= w[0].jsd);
            assert!(w[1].kld > w[0].kld);
        }
        assert!(c[50].jsd > c[0].jsd);
        assert!(boundary_curve(1).is_err());
    }

    #[test]
    fn envelope_lies_below_random_images() {
        // kl >= xi(jsd) - 1e-9 for random interior points
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..2000 {
            let mu: f64 = rng.gen();
            let nu: f64 = rng.gen_range(1e-6..1.0);
            let (mu, nu) = if nu <= mu { (mu, nu) } else { (nu.max(1e-6), mu.max(1e-12)) };
            if nu > mu || nu <= 0.0 {
                continue;
            }
            let v = phi(&BernoulliPoint::new(mu, nu).unwrap());
            if v.jsd >= LN_2 {
                continue;
            }
            let bound = xi(v.jsd).unwrap();
            assert!(v.kld >= bound - 1e-9, "({mu},{nu}): kl={} bound={bound}", v.kld);
        }
    }
}
