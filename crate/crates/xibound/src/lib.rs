//! Tight lower bounds on KL divergence (and mutual information) from
//! Jensen–Shannon divergence, plus the tooling to exercise them: exact
//! discrete computations, a numerical certificate for the Jacobian sign
//! conjecture, and a benchmark of discriminator-based neural MI estimators.
//!
//! The centerpiece is the strictly increasing function `Ξ` with
//! `Ξ(JSD(P‖Q)) ≤ KLD(P‖Q)` for every pair of distributions, and equality on
//! a known family. `Ξ` has no closed form, but its inverse does:
//! `Ξ⁻¹(y) = log 2 − ½[(1+e^{−y})·ln(1+e^{−y}) + y·e^{−y}]`, which is the
//! Jensen–Shannon divergence between Bernoulli(1) and Bernoulli(e^{−y}).
//!
//! # Evaluating the bound
//!
//! ```
//! use xibound::scalar_bound::{xi, xi_inverse, LN_2};
//!
//! // A discriminator that attains cross-entropy loss L certifies
//! // I(U;V) >= xi(log 2 - L).
//! let js_info = 0.2157615543388357; // = xi_inverse(ln 2)
//! let mi_lower_bound = xi(js_info).unwrap();
//! assert!((mi_lower_bound - LN_2).abs() < 1e-9);
//!
//! // xi_inverse is the exact closed form.
//! assert!((xi_inverse(LN_2).unwrap() - js_info).abs() < 1e-15);
//! ```
//!
//! # Exact tightness on discrete families
//!
//! The interpolated family `P⁽ᵅ⁾ = (1−α)·P_U⊗P_V + α·diag(P_U)` with uniform
//! marginals pins the bound: at `α = 1` (full dependence, `U = V`) the pair
//! `(I_JS, I)` sits exactly on the boundary curve.
//!
//! ```
//! use xibound::discrete_exact::{make_alpha_family, exact_mi, exact_jsinfo};
//! use xibound::scalar_bound::xi;
//!
//! let joint = make_alpha_family(8, 1.0).unwrap();
//! let mi = exact_mi(&joint);
//! assert!((mi - 8f64.ln()).abs() < 1e-12);
//! assert!((xi(exact_jsinfo(&joint)).unwrap() - mi).abs() < 1e-9);
//! ```
//!
//! # The Bernoulli joint range
//!
//! Every achievable (JSD, KLD) pair is achieved by a pair of Bernoulli
//! distributions, so the two-parameter map `φ(μ, ν) = (JSD, KLD)` tells the
//! whole story; its Jacobian determinant is negative everywhere in the
//! interior of the parameter triangle (certified on a grid by
//! [`joint_range::certify_conjecture`]).
//!
//! ```
//! use xibound::joint_range::{phi, jacobian, BernoulliPoint};
//! let p = BernoulliPoint::interior(0.75, 0.25).unwrap();
//! assert!(jacobian(&p).unwrap().det < 0.0);
//! let v = phi(&p);
//! assert!(v.jsd <= v.kld);
//! ```
//!
//! See the guide in `book/` for a narrative walkthrough of each module.

extern crate blas_src;

pub mod bench;
pub mod discrete_exact;
pub mod error;
pub mod joint_range;
pub mod mi_estimators;
pub mod neural_net;
pub mod scalar_bound;
pub mod synth_data;

pub use error::{Error, Result};
