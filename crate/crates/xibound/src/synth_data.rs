//! Synthetic benchmark tasks: correlated Gaussian pairs with known mutual
//! information, optional elementwise transforms that leave MI invariant, and
//! the staircase schedule of increasing targets.

use ndarray::Array2;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Elementwise transform applied to both coordinates of a sample pair.
/// Each is a strictly increasing bijection of ℝ, so mutual information is
/// unchanged; only the estimator's job gets harder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    Identity,
    /// `x ↦ x³`
    Cubic,
    /// `x ↦ asinh(x)`
    Asinh,
    /// `x ↦ sign(x)·|x|^{3/2}`
    HalfCube,
}

impl Transform {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::Cubic => x * x * x,
            Transform::Asinh => x.asinh(),
            Transform::HalfCube => x.signum() * x.abs().powf(1.5),
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Transform::Identity => "identity",
            Transform::Cubic => "cubic",
            Transform::Asinh => "asinh",
            Transform::HalfCube => "halfcube",
        };
        f.write_str(s)
    }
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Transform::Identity),
            "cubic" => Ok(Transform::Cubic),
            "asinh" => Ok(Transform::Asinh),
            "halfcube" => Ok(Transform::HalfCube),
            other => Err(Error::Config(format!("unknown transform '{other}'"))),
        }
    }
}

/// Applies a transform elementwise to a batch in place.
pub fn apply_transform(t: Transform, batch: &mut Array2<f64>) {
    if t == Transform::Identity {
        return;
    }
    batch.mapv_inplace(|x| t.apply(x));
}

/// The per-coordinate correlation that makes a `d`-dimensional diagonal
/// Gaussian pair carry exactly `mi` nats: `ρ = sqrt(1 − exp(−2·mi/d))`.
pub fn rho_for_mi(mi: f64, d: usize) -> Result<f64> {
    if d == 0 {
        return Err(Error::Domain("dimension must be positive".into()));
    }
    if !(mi.is_finite() && mi >= 0.0) {
        return Err(Error::Domain(format!("target MI must be finite and >= 0, got {mi}")));
    }
    Ok((-(-2.0 * mi / d as f64).exp_m1()).sqrt())
}

/// A correlated Gaussian task: `U ~ N(0, I_d)`, `V = ρU + sqrt(1−ρ²)·N`,
/// with a transform applied to both sides after sampling.
#[derive(Debug, Clone, Copy)]
pub struct GaussianTaskSpec {
    pub d: usize,
    pub rho: f64,
    pub transform: Transform,
}

impl GaussianTaskSpec {
    pub fn new(d: usize, rho: f64, transform: Transform) -> Result<Self> {
        if d == 0 {
            return Err(Error::Domain("dimension must be positive".into()));
        }
        if !(rho.is_finite() && (0.0..1.0).contains(&rho)) {
            return Err(Error::Domain(format!("rho must lie in [0,1), got {rho}")));
        }
        Ok(Self { d, rho, transform })
    }

    pub fn for_target_mi(mi: f64, d: usize, transform: Transform) -> Result<Self> {
        Self::new(d, rho_for_mi(mi, d)?, transform)
    }

    /// `I(U;V) = −(d/2)·ln(1−ρ²)` nats; the transform does not change it.
    pub fn true_mi(&self) -> f64 {
        -0.5 * self.d as f64 * (1.0 - self.rho * self.rho).ln()
    }
}

/// One batch of paired samples; rows are samples, columns are coordinates.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub u: Array2<f64>,
    pub v: Array2<f64>,
}

impl SampleBatch {
    pub fn batch_size(&self) -> usize {
        self.u.nrows()
    }

    pub fn dim(&self) -> usize {
        self.u.ncols()
    }
}

/// Deterministic sampler for a Gaussian task, seeded once; repeated calls
/// continue the same stream.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    spec: GaussianTaskSpec,
    rng: ChaCha8Rng,
    /// One buffered Gaussian from the Box–Muller pair.
    spare: Option<f64>,
}

impl GaussianSampler {
    pub fn new(spec: GaussianTaskSpec, seed: u64) -> Self {
        Self {
            spec,
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn spec(&self) -> GaussianTaskSpec {
        self.spec
    }

    /// Change the correlation mid-stream (the staircase does this between
    /// steps) without resetting the random stream.
    pub fn set_rho(&mut self, rho: f64) -> Result<()> {
        if !(rho.is_finite() && (0.0..1.0).contains(&rho)) {
            return Err(Error::Domain(format!("rho must lie in [0,1), got {rho}")));
        }
        self.spec.rho = rho;
        Ok(())
    }

    /// One standard normal via Box–Muller (trigonometric form), buffering the
    /// second value of each pair. `u1` is drawn from `(0, 1]` so the log is
    /// always finite.
    fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.rng.gen::<f64>();
        let u2: f64 = self.rng.gen();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn sample_batch(&mut self, batch_size: usize) -> SampleBatch {
        let GaussianTaskSpec { d, rho, transform } = self.spec;
        let noise = (1.0 - rho * rho).sqrt();
        let mut u = Array2::zeros((batch_size, d));
        let mut v = Array2::zeros((batch_size, d));
        for i in 0..batch_size {
            for j in 0..d {
                let x = self.standard_normal();
                let n = self.standard_normal();
                u[[i, j]] = x;
                v[[i, j]] = rho * x + noise * n;
            }
        }
        apply_transform(transform, &mut u);
        apply_transform(transform, &mut v);
        SampleBatch { u, v }
    }
}

/// A piecewise-constant schedule of MI targets.
#[derive(Debug, Clone, PartialEq)]
pub struct StaircaseSchedule {
    /// `(target_mi_nats, n_iterations)` per step, run in order.
    pub steps: Vec<(f64, usize)>,
}

impl StaircaseSchedule {
    pub fn new(steps: Vec<(f64, usize)>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::Config("schedule must have at least one step".into()));
        }
        for &(mi, iters) in &steps {
            if !(mi.is_finite() && mi >= 0.0) || iters == 0 {
                return Err(Error::Config(format!(
                    "invalid schedule step (mi = {mi}, iterations = {iters})"
                )));
            }
        }
        Ok(Self { steps })
    }

    pub fn total_iterations(&self) -> usize {
        self.steps.iter().map(|&(_, n)| n).sum()
    }

    /// The target in force at global iteration `t` (0-based).
    pub fn target_at(&self, t: usize) -> Option<f64> {
        let mut acc = 0usize;
        for &(mi, n) in &self.steps {
            acc += n;
            if t < acc {
                return Some(mi);
            }
        }
        None
    }
}

/// The benchmark staircase: targets 2, 4, 6, 8, 10 nats, 4000 iterations
/// each.
pub fn default_staircase() -> StaircaseSchedule {
    StaircaseSchedule::new(vec![
        (2.0, 4000),
        (4.0, 4000),
        (6.0, 4000),
        (8.0, 4000),
        (10.0, 4000),
    ])
    .expect("static schedule is valid")
}

/// Derives an independent stream seed for a worker from a base seed, so
/// per-(estimator, seed) runs never share randomness.
pub fn derive_stream_seed(base: u64, salt: u64) -> u64 {
    // splitmix64 over base ^ rotated salt; standard finalizer constants.
    let mut z = base ^ salt.rotate_left(32) ^ 0x9e37_79b9_7f4a_7c15;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A seeded RNG for neural-net initialization derived from a run seed.
pub fn derive_rng(base: u64, salt: u64) -> impl RngCore {
    ChaCha8Rng::seed_from_u64(derive_stream_seed(base, salt))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rho_inverts_true_mi() {
        for &(mi, d) in &[(2.0, 5), (10.0, 5), (0.5, 1), (8.0, 20)] {
            let spec = GaussianTaskSpec::for_target_mi(mi, d, Transform::Identity).unwrap();
            assert!((spec.true_mi() - mi).abs() < 1e-12, "mi={mi} d={d}");
        }
    }

    #[test]
    fn rho_examples() {
        // d=5, MI=2: rho = sqrt(1 - e^{-0.8})
        assert!((rho_for_mi(2.0, 5).unwrap() - 0.742_072_123_100_429_1).abs() < 1e-12);
        assert!(rho_for_mi(0.0, 3).unwrap() == 0.0);
        assert!(rho_for_mi(f64::INFINITY, 3).is_err());
        assert!(rho_for_mi(2.0, 0).is_err());
    }

    #[test]
    fn transforms_are_increasing_and_odd() {
        for t in [Transform::Cubic, Transform::Asinh, Transform::HalfCube] {
            let mut prev = f64::NEG_INFINITY;
            for i in -100..=100 {
                let x = i as f64 / 10.0;
                let y = t.apply(x);
                assert!(y > prev, "{t} not increasing at {x}");
                assert!((t.apply(-x) + y).abs() < 1e-12, "{t} not odd at {x}");
                prev = y;
            }
        }
        assert_eq!(Transform::HalfCube.apply(4.0), 8.0);
        assert_eq!(Transform::Cubic.apply(2.0), 8.0);
    }

    #[test]
    fn transform_round_trip_strings() {
        for t in [
            Transform::Identity,
            Transform::Cubic,
            Transform::Asinh,
            Transform::HalfCube,
        ] {
            assert_eq!(t.to_string().parse::<Transform>().unwrap(), t);
        }
        assert!("sinh".parse::<Transform>().is_err());
    }

    #[test]
    fn sampler_is_deterministic() {
        let spec = GaussianTaskSpec::for_target_mi(4.0, 5, Transform::Cubic).unwrap();
        let a = GaussianSampler::new(spec, 7).sample_batch(16);
        let b = GaussianSampler::new(spec, 7).sample_batch(16);
        assert_eq!(a.u, b.u);
        assert_eq!(a.v, b.v);
        let c = GaussianSampler::new(spec, 8).sample_batch(16);
        assert_ne!(a.u, c.u);
    }

    #[test]
    fn sampler_moments_match() {
        let spec = GaussianTaskSpec::new(2, 0.8, Transform::Identity).unwrap();
        let mut s = GaussianSampler::new(spec, 1);
        let n = 200_000;
        let batch = s.sample_batch(n);
        let mean_u = batch.u.column(0).mean().unwrap();
        let var_u = batch.u.column(0).mapv(|x| x * x).mean().unwrap() - mean_u * mean_u;
        let cov: f64 = batch
            .u
            .column(0)
            .iter()
            .zip(batch.v.column(0).iter())
            .map(|(&a, &b)| a * b)
            .sum::<f64>()
            / n as f64;
        assert!(mean_u.abs() < 0.01, "mean {mean_u}");
        assert!((var_u - 1.0).abs() < 0.02, "var {var_u}");
        assert!((cov - 0.8).abs() < 0.02, "cov {cov}");
        // cross-coordinate independence
        let cross: f64 = batch
            .u
            .column(0)
            .iter()
            .zip(batch.v.column(1).iter())
            .map(|(&a, &b)| a * b)
            .sum::<f64>()
            / n as f64;
        assert!(cross.abs() < 0.02, "cross {cross}");
    }

    #[test]
    fn schedule_lookup() {
        let s = default_staircase();
        assert_eq!(s.total_iterations(), 20_000);
        assert_eq!(s.target_at(0), Some(2.0));
        assert_eq!(s.target_at(3999), Some(2.0));
        assert_eq!(s.target_at(4000), Some(4.0));
        assert_eq!(s.target_at(19_999), Some(10.0));
        assert_eq!(s.target_at(20_000), None);
    }

    #[test]
    fn schedule_validation() {
        assert!(StaircaseSchedule::new(vec![]).is_err());
        assert!(StaircaseSchedule::new(vec![(2.0, 0)]).is_err());
        assert!(StaircaseSchedule::new(vec![(-1.0, 10)]).is_err());
    }

    #[test]
    fn stream_seeds_differ() {
        let a = derive_stream_seed(42, 0);
        let b = derive_stream_seed(42, 1);
        let c = derive_stream_seed(43, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_stream_seed(42, 0));
    }
}
