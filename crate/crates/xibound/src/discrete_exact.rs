//! Exact categorical computations: MI and JS-information of a joint table
//! against the product of its own marginals, the α-interpolated uniform
//! family, exact discriminator posteriors, and the identities that tie them
//! together (`I = E[logit posterior]`, `I_JS = log 2 − H(Z|U,V)`).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar_bound::{logit, xi, LN_2};

const SUM_TOL: f64 = 1e-12;

/// A categorical distribution over `k` outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector {
    probs: Vec<f64>,
}

impl ProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Distribution("empty probability vector".into()));
        }
        if probs.iter().any(|&p| !p.is_finite() || p < 0.0) {
            return Err(Error::Distribution("negative or non-finite entry".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::Distribution(format!("entries sum to {sum}, not 1")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Distribution("uniform needs k >= 1".into()));
        }
        Ok(Self {
            probs: vec![1.0 / k as f64; k],
        })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// A joint distribution over `k × k` outcomes, stored row-major. Its
/// marginals are the row and column sums of the table itself.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    table: Vec<f64>,
    k: usize,
}

impl JointTable {
    pub fn new(table: Vec<f64>, k: usize) -> Result<Self> {
        if k < 1 || table.len() != k * k {
            return Err(Error::Distribution(format!(
                "table length {} does not match k = {k}",
                table.len()
            )));
        }
        if table.iter().any(|&p| !p.is_finite() || p < 0.0) {
            return Err(Error::Distribution("negative or non-finite cell".into()));
        }
        let sum: f64 = table.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::Distribution(format!("cells sum to {sum}, not 1")));
        }
        Ok(Self { table, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn cell(&self, u: usize, v: usize) -> f64 {
        self.table[u * self.k + v]
    }

    pub fn cells(&self) -> &[f64] {
        &self.table
    }

    /// Row sums: the marginal of `U`.
    pub fn row_marginal(&self) -> ProbVector {
        let probs = (0..self.k)
            .map(|u| (0..self.k).map(|v| self.cell(u, v)).sum())
            .collect();
        ProbVector { probs }
    }

    /// Column sums: the marginal of `V`.
    pub fn col_marginal(&self) -> ProbVector {
        let probs = (0..self.k)
            .map(|v| (0..self.k).map(|u| self.cell(u, v)).sum())
            .collect();
        ProbVector { probs }
    }
}

/// The interpolated family `P⁽ᵅ⁾ = (1−α)·P_U⊗P_V + α·diag(P_U)` with uniform
/// marginals over `k` outcomes. `α = 0` is independence; `α = 1` is `U = V`.
pub fn make_alpha_family(k: usize, alpha: f64) -> Result<JointTable> {
    if k < 2 {
        return Err(Error::Domain(format!("alpha family needs k >= 2, got {k}")));
    }
    if !(alpha.is_finite() && (0.0..=1.0).contains(&alpha)) {
        return Err(Error::Domain(format!("alpha must lie in [0,1], got {alpha}")));
    }
    let off = (1.0 - alpha) / (k * k) as f64;
    let diag = off + alpha / k as f64;
    let mut table = vec![off; k * k];
    for i in 0..k {
        table[i * k + i] = diag;
    }
    // Renormalize away accumulated roundoff so the invariant check is exact.
    let sum: f64 = table.iter().sum();
    for c in &mut table {
        *c /= sum;
    }
    JointTable::new(table, k)
}

/// `I(U;V) = Σ p(u,v) log(p(u,v) / (p(u)p(v)))` with `0 log 0 = 0`.
/// Infinite if some joint cell is positive where the product vanishes.
pub fn exact_mi(j: &JointTable) -> f64 {
    let pu = j.row_marginal();
    let pv = j.col_marginal();
    let mut total = 0.0;
    for u in 0..j.k {
        for v in 0..j.k {
            let p = j.cell(u, v);
            if p == 0.0 {
                continue;
            }
            let q = pu.probs[u] * pv.probs[v];
            if q == 0.0 {
                return f64::INFINITY;
            }
            total += p * (p / q).ln();
        }
    }
    total.max(0.0)
}

/// `I_JS(U;V) = JSD(p_UV ‖ p_U ⊗ p_V)` via the cellwise mixture
/// `m = ½ p_UV + ½ p_U p_V`. Always finite, in `[0, log 2]`.
pub fn exact_jsinfo(j: &JointTable) -> f64 {
    let pu = j.row_marginal();
    let pv = j.col_marginal();
    let mut total = 0.0;
    for u in 0..j.k {
        for v in 0..j.k {
            let p = j.cell(u, v);
            let q = pu.probs[u] * pv.probs[v];
            let m = 0.5 * (p + q);
            if p > 0.0 {
                total += 0.5 * p * (p / m).ln();
            }
            if q > 0.0 {
                total += 0.5 * q * (q / m).ln();
            }
        }
    }
    total.clamp(0.0, LN_2)
}

/// The optimal discriminator posterior `p̃(z=1|u,v) = p/(p + p_u p_v)`
/// cellwise, row-major `k × k`. Equals ½ wherever joint and product agree.
pub fn exact_posterior(j: &JointTable) -> Vec<f64> {
    let pu = j.row_marginal();
    let pv = j.col_marginal();
    let mut post = vec![0.0; j.k * j.k];
    for u in 0..j.k {
        for v in 0..j.k {
            let p = j.cell(u, v);
            let q = pu.probs[u] * pv.probs[v];
            post[u * j.k + v] = if p + q == 0.0 { 0.5 } else { p / (p + q) };
        }
    }
    post
}

/// `I(U;V) = E_pUV[logit p̃(z=1|u,v)]`, skipping zero-probability joint
/// cells. Equals [`exact_mi`] exactly in the finite cases.
pub fn mi_from_posterior(j: &JointTable) -> f64 {
    let post = exact_posterior(j);
    let mut total = 0.0;
    for u in 0..j.k {
        for v in 0..j.k {
            let p = j.cell(u, v);
            if p == 0.0 {
                continue;
            }
            let t = post[u * j.k + v];
            if t == 1.0 {
                return f64::INFINITY;
            }
            total += p * logit(t);
        }
    }
    total.max(0.0)
}

/// Optimal cross-entropy and the identities it satisfies.
#[derive(Debug, Clone, Copy)]
pub struct CeIdentities {
    /// The loss of the optimal discriminator, `L*_CE = H(Z|U,V)`.
    pub l_ce_star: f64,
    /// `H(Z|U,V) = Σ m(u,v) h₂(p̃(z=1|u,v))`.
    pub h_z_given_uv: f64,
    /// `I_JS = log 2 − H(Z|U,V)`.
    pub i_js: f64,
}

fn binary_entropy(p: f64) -> f64 {
    let h = |x: f64| if x == 0.0 { 0.0 } else { -x * x.ln() };
    h(p) + h(1.0 - p)
}

/// Computes `H(Z|U,V)` under the balanced joint-vs-product mixture and the
/// identity `I_JS = log 2 − H(Z|U,V)`.
pub fn optimal_ce_and_identities(j: &JointTable) -> CeIdentities {
    let pu = j.row_marginal();
    let pv = j.col_marginal();
    let post = exact_posterior(j);
    let mut h = 0.0;
    for u in 0..j.k {
        for v in 0..j.k {
            let p = j.cell(u, v);
            let q = pu.probs[u] * pv.probs[v];
            let m = 0.5 * (p + q);
            if m > 0.0 {
                h += m * binary_entropy(post[u * j.k + v]);
            }
        }
    }
    CeIdentities {
        l_ce_star: h,
        h_z_given_uv: h,
        i_js: (LN_2 - h).max(0.0),
    }
}

/// One row of a tightness sweep.
#[derive(Debug, Clone, Copy)]
pub struct TightnessRow {
    pub k: usize,
    pub alpha: f64,
    pub mi: f64,
    pub jsinfo: f64,
    pub bound: f64,
}

/// Closed-form `(MI, I_JS)` of the α-family, exploiting that the table has
/// only two distinct cell values (diagonal and off-diagonal). Agrees with the
/// general table path; the sweep uses it so large `k` stays cheap.
pub fn alpha_family_divergences(k: usize, alpha: f64) -> Result<(f64, f64)> {
    if k < 2 {
        return Err(Error::Domain(format!("alpha family needs k >= 2, got {k}")));
    }
    if !(alpha.is_finite() && (0.0..=1.0).contains(&alpha)) {
        return Err(Error::Domain(format!("alpha must lie in [0,1], got {alpha}")));
    }
    let kf = k as f64;
    let q = 1.0 / (kf * kf); // product cell
    let off = (1.0 - alpha) * q;
    let diag = off + alpha / kf;

    let mut mi = 0.0;
    if diag > 0.0 {
        mi += kf * diag * (diag / q).ln();
    }
    if off > 0.0 {
        mi += kf * (kf - 1.0) * off * (off / q).ln();
    }

    let m_diag = 0.5 * (diag + q);
    let m_off = 0.5 * (off + q);
    let mut js = 0.0;
    if diag > 0.0 {
        js += 0.5 * kf * diag * (diag / m_diag).ln();
    }
    if off > 0.0 {
        js += 0.5 * kf * (kf - 1.0) * off * (off / m_off).ln();
    }
    js += 0.5 * kf * q * (q / m_diag).ln();
    js += 0.5 * kf * (kf - 1.0) * q * (q / m_off).ln();

    Ok((mi.max(0.0), js.clamp(0.0, LN_2)))
}

/// Sweeps the α-family over the given `k` and `α` grids, reporting the exact
/// MI, the exact JS-information, and the bound `Ξ(I_JS)` for every cell.
/// Rows come back in `(k, α)` lexicographic order regardless of parallelism.
pub fn tightness_sweep(ks: &[usize], alphas: &[f64]) -> Result<Vec<TightnessRow>> {
    if ks.is_empty() || alphas.is_empty() {
        return Err(Error::Domain("tightness_sweep needs non-empty grids".into()));
    }
    let cells: Vec<(usize, f64)> = ks
        .iter()
        .flat_map(|&k| alphas.iter().map(move |&a| (k, a)))
        .collect();
    cells
        .into_par_iter()
        .map(|(k, alpha)| {
            let (mi, jsinfo) = alpha_family_divergences(k, alpha)?;
            let bound = xi(jsinfo.min(f64::from_bits(LN_2.to_bits() - 1)))?;
            Ok(TightnessRow {
                k,
                alpha,
                mi,
                jsinfo,
                bound,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar_bound::xi_inverse;
    use rand::{Rng, SeedableRng};

    /// Random strictly positive table for identity checks: i.i.d. exponential
    /// weights, normalized.
    pub(crate) fn random_table(k: usize, rng: &mut impl Rng) -> JointTable {
        let mut cells: Vec<f64> = (0..k * k).map(|_| -rng.gen::<f64>().max(1e-12).ln()).collect();
        let sum: f64 = cells.iter().sum();
        for c in &mut cells {
            *c /= sum;
        }
        // renormalize once more to hit the 1e-12 sum tolerance
        let sum: f64 = cells.iter().sum();
        for c in &mut cells {
            *c /= sum;
        }
        JointTable::new(cells, k).unwrap()
    }

    #[test]
    fn prob_vector_validation() {
        assert!(ProbVector::new(vec![0.5, 0.5]).is_ok());
        assert!(ProbVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVector::new(vec![-0.1, 1.1]).is_err());
        assert!(ProbVector::new(vec![]).is_err());
        assert_eq!(ProbVector::uniform(4).unwrap().probs(), &[0.25; 4]);
    }

    #[test]
    fn alpha_family_independence() {
        let j = make_alpha_family(2, 0.0).unwrap();
        assert_eq!(j.cells(), &[0.25; 4]);
        assert!((exact_mi(&j)).abs() < 1e-15);
        assert!((exact_jsinfo(&j)).abs() < 1e-15);
    }

    #[test]
    fn alpha_family_full_dependence() {
        let j = make_alpha_family(2, 1.0).unwrap();
        assert_eq!(j.cell(0, 0), 0.5);
        assert_eq!(j.cell(0, 1), 0.0);
        assert!((exact_mi(&j) - LN_2).abs() < 1e-12);
    }

    #[test]
    fn alpha_family_k3_half() {
        let j = make_alpha_family(3, 0.5).unwrap();
        assert!((j.cell(0, 0) - 2.0 / 9.0).abs() < 1e-15);
        assert!((j.cell(0, 1) - 1.0 / 18.0).abs() < 1e-15);
    }

    #[test]
    fn alpha_family_marginals_stay_uniform() {
        for &(k, a) in &[(2, 0.3), (5, 0.7), (17, 0.99)] {
            let j = make_alpha_family(k, a).unwrap();
            for p in j.row_marginal().probs() {
                assert!((p - 1.0 / k as f64).abs() < 1e-14);
            }
            for p in j.col_marginal().probs() {
                assert!((p - 1.0 / k as f64).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn exact_mi_brute_force_cross_check() {
        // k=2, alpha=0.5; value frozen from an extended-precision double loop.
        let j = make_alpha_family(2, 0.5).unwrap();
        assert!((exact_mi(&j) - 0.130_812_035_941_136_96).abs() < 1e-14);
        assert!((exact_jsinfo(&j) - 0.033_822_075_568_605_23).abs() < 1e-14);
    }

    #[test]
    fn fully_dependent_uniform_hits_log_k() {
        for k in [2usize, 3, 10, 50] {
            let j = make_alpha_family(k, 1.0).unwrap();
            assert!((exact_mi(&j) - (k as f64).ln()).abs() < 1e-12);
            let js = exact_jsinfo(&j);
            assert!((js - xi_inverse((k as f64).ln()).unwrap()).abs() < 1e-12, "k = {k}");
        }
    }

    #[test]
    fn posterior_examples() {
        let j = make_alpha_family(2, 0.0).unwrap();
        assert!(exact_posterior(&j).iter().all(|&t| (t - 0.5).abs() < 1e-15));

        let j = make_alpha_family(2, 1.0).unwrap();
        let post = exact_posterior(&j);
        assert!((post[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(post[1], 0.0);
    }

    #[test]
    fn mi_from_posterior_examples() {
        let j = make_alpha_family(2, 1.0).unwrap();
        assert!((mi_from_posterior(&j) - LN_2).abs() < 1e-12);

        let j = make_alpha_family(2, 0.0).unwrap();
        assert!(mi_from_posterior(&j).abs() < 1e-15);

        let j = make_alpha_family(5, 0.3).unwrap();
        assert!((mi_from_posterior(&j) - exact_mi(&j)).abs() < 1e-12);
    }

    #[test]
    fn mi_from_posterior_identity_random_tables() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let k = rng.gen_range(2..10);
            let j = random_table(k, &mut rng);
            assert!((mi_from_posterior(&j) - exact_mi(&j)).abs() < 1e-12);
        }
    }

    #[test]
    fn ce_identities() {
        let j = make_alpha_family(2, 1.0).unwrap();
        let c = optimal_ce_and_identities(&j);
        // H(Z|UV) = 2 * 0.375 * h2(2/3), frozen in extended precision.
        assert!((c.h_z_given_uv - 0.477_385_626_221_109_6).abs() < 1e-12, "{}", c.h_z_given_uv);
        assert!((c.i_js - 0.215_761_554_338_835_7).abs() < 1e-12);
        assert_eq!(c.l_ce_star, c.h_z_given_uv);

        let j = make_alpha_family(3, 0.0).unwrap();
        let c = optimal_ce_and_identities(&j);
        assert!((c.h_z_given_uv - LN_2).abs() < 1e-15);
        assert!(c.i_js.abs() < 1e-15);
    }

    #[test]
    fn ce_identity_matches_jsinfo_random_tables() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let k = rng.gen_range(2..10);
            let j = random_table(k, &mut rng);
            let c = optimal_ce_and_identities(&j);
            assert!((c.i_js - exact_jsinfo(&j)).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_alpha_divergences_match_table_path() {
        for &(k, a) in &[(2usize, 0.0), (2, 0.5), (3, 0.25), (7, 0.9), (20, 1.0), (5, 1.0)] {
            let (mi, js) = alpha_family_divergences(k, a).unwrap();
            let j = make_alpha_family(k, a).unwrap();
            assert!((mi - exact_mi(&j)).abs() < 1e-12, "k={k} a={a}");
            assert!((js - exact_jsinfo(&j)).abs() < 1e-12, "k={k} a={a}");
        }
    }

    #[test]
    fn tightness_rows() {
        let rows = tightness_sweep(&[4], &[0.0, 1.0]).unwrap();
        assert_eq!(rows.len(), 2);
        // (k, alpha=0) -> (0, 0, 0)
        assert!(rows[0].mi.abs() < 1e-12 && rows[0].jsinfo.abs() < 1e-12 && rows[0].bound.abs() < 1e-9);
        // (k=4, alpha=1) -> mi = log 4, bound = log 4
        assert!((rows[1].mi - 4f64.ln()).abs() < 1e-12);
        assert!((rows[1].jsinfo - 0.380_395_665_848_577_9).abs() < 1e-12);
        assert!((rows[1].bound - 4f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn tightness_bound_never_exceeds_mi() {
        let ks: Vec<usize> = (2..=40).collect();
        let alphas: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        for row in tightness_sweep(&ks, &alphas).unwrap() {
            assert!(row.bound <= row.mi + 1e-9, "k={} a={}", row.k, row.alpha);
        }
    }

    #[test]
    fn table_validation() {
        assert!(JointTable::new(vec![0.25; 4], 2).is_ok());
        assert!(JointTable::new(vec![0.3; 4], 2).is_err());
        assert!(JointTable::new(vec![0.25; 3], 2).is_err());
        assert!(JointTable::new(vec![-0.25, 0.5, 0.5, 0.25], 2).is_err());
    }
}
