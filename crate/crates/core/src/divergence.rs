//! Convex divergence generators `f`, their conjugates, and divergence caps.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Add, Mul};

// Supplies sqrt/exp/ln without std; unused when std is linked in.
#[allow(unused_imports)]
use num_traits::Float as _;

use crate::error::{Error, Result};
use crate::math::kahan_sum;
use crate::measure::Coupling;

/// A real number or `+inf`, kept apart so infinity never masquerades as a float.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum Extended {
    Finite(f64),
    Infinite,
}

impl Extended {
    pub fn is_finite(self) -> bool {
        matches!(self, Extended::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Extended::Finite(v) => Some(v),
            Extended::Infinite => None,
        }
    }

    /// The value, with `+inf` mapped to `f64::INFINITY` (for display and output only).
    pub fn to_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl Add for Extended {
    type Output = Extended;
    fn add(self, o: Extended) -> Extended {
        match (self, o) {
            (Extended::Finite(a), Extended::Finite(b)) => Extended::Finite(a + b),
            _ => Extended::Infinite,
        }
    }
}

/// Scaling by a nonnegative factor; `0 * inf = 0` as in measure theory.
impl Mul<f64> for Extended {
    type Output = Extended;
    fn mul(self, s: f64) -> Extended {
        match self {
            Extended::Finite(a) => Extended::Finite(a * s),
            Extended::Infinite if s == 0.0 => Extended::Finite(0.0),
            Extended::Infinite => Extended::Infinite,
        }
    }
}

impl fmt::Display for Extended {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extended::Finite(v) => write!(f, "{v}"),
            Extended::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DivergenceTag {
    Entropy,
    Power(f64),
    Custom,
}

pub type ScalarFn = dyn Fn(f64) -> f64 + Send + Sync;

struct CustomParts {
    f: Arc<ScalarFn>,
    f_star: Arc<ScalarFn>,
    f_star_prime: Arc<ScalarFn>,
}

/// Shape properties of `phi = f(x) / x` required by the divergence caps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Flags {
    pub phi_nondecreasing: bool,
    pub phi_concave: bool,
}

/// Which bound on `D_f(pi, P)` for couplings with discrete marginals to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CapMode {
    /// Two marginals, `phi` concave: `phi(n_2)`.
    TwoMarginalConcave,
    /// Uniformly weighted marginals `2..N`: `phi(prod n_i)`.
    EmpiricalProduct,
    /// Entropy only: `sum log n_i`.
    EntropicChain,
}

/// A divergence generator `f(x) = x phi(x)`, convex, superlinear, `f(1) = 0`.
#[derive(Clone)]
pub struct FDivergence {
    tag: DivergenceTag,
    flags: Flags,
    custom: Option<Arc<CustomParts>>,
}

impl fmt::Debug for FDivergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FDivergence")
            .field("tag", &self.tag)
            .field("flags", &self.flags)
            .finish()
    }
}

impl FDivergence {
    pub fn entropy() -> Self {
        Self {
            tag: DivergenceTag::Entropy,
            flags: Flags {
                phi_nondecreasing: true,
                phi_concave: true,
            },
            custom: None,
        }
    }

    /// `f(x) = (x^rho - 1) / rho`.
    pub fn power(rho: f64) -> Result<Self> {
        if !(rho > 1.0) || !rho.is_finite() {
            return Err(Error::InvalidRho(rho));
        }
        Ok(Self {
            tag: DivergenceTag::Power(rho),
            flags: Flags {
                phi_nondecreasing: true,
                phi_concave: rho <= 2.0,
            },
            custom: None,
        })
    }

    /// A user-supplied generator. The conjugate and its derivative must be
    /// given in closed form; the object is rejected unless it passes the
    /// same invariant battery the builtins satisfy. Flags are inferred by
    /// sampling `phi`.
    pub fn custom(f: Arc<ScalarFn>, f_star: Arc<ScalarFn>, f_star_prime: Arc<ScalarFn>) -> Result<Self> {
        let mut fd = Self {
            tag: DivergenceTag::Custom,
            flags: Flags {
                phi_nondecreasing: false,
                phi_concave: false,
            },
            custom: Some(Arc::new(CustomParts { f, f_star, f_star_prime })),
        };
        check_invariants(&fd).map_err(Error::InvalidDivergence)?;
        fd.flags = infer_flags(&fd);
        Ok(fd)
    }

    pub fn tag(&self) -> DivergenceTag {
        self.tag
    }

    pub fn flags(&self) -> Flags {
        self.flags
    }

    pub fn is_entropy(&self) -> bool {
        self.tag == DivergenceTag::Entropy
    }

    /// `q = rho / (rho - 1)` for the power family.
    fn q(rho: f64) -> f64 {
        rho / (rho - 1.0)
    }

    /// `f(x)` for `x >= 0`, with `f(0)` the right limit.
    pub fn f(&self, x: f64) -> f64 {
        match self.tag {
            DivergenceTag::Entropy => {
                if x == 0.0 {
                    0.0
                } else {
                    x * x.ln()
                }
            }
            DivergenceTag::Power(rho) => (x.powf(rho) - 1.0) / rho,
            DivergenceTag::Custom => (self.custom.as_ref().unwrap().f)(x),
        }
    }

    /// `phi(x) = f(x) / x` for `x > 0`.
    pub fn phi(&self, x: f64) -> f64 {
        match self.tag {
            DivergenceTag::Entropy => x.ln(),
            DivergenceTag::Power(rho) => x.powf(rho - 1.0) / rho - 1.0 / (rho * x),
            DivergenceTag::Custom => self.f(x) / x,
        }
    }

    /// `f'(x)` for `x > 0` (numerical for custom generators).
    pub fn f_prime(&self, x: f64) -> f64 {
        match self.tag {
            DivergenceTag::Entropy => x.ln() + 1.0,
            DivergenceTag::Power(rho) => x.powf(rho - 1.0),
            DivergenceTag::Custom => {
                let h = 1e-6 * x.max(1e-3);
                let lo = (x - h).max(0.0);
                (self.f(x + h) - self.f(lo)) / (x + h - lo)
            }
        }
    }

    /// Slope `s` such that [`f_star`](Self::f_star) is the conjugate of
    /// `f(x) - s (x - 1)`.
    ///
    /// For entropy the conjugate `e^y - 1` belongs to the mass-normalized
    /// generator `x log x - x + 1`; it differs from `x log x` by a term that
    /// integrates to zero against any pair of probability measures, so
    /// divergences, regularized values and dual bounds are unchanged.
    pub fn conjugate_shift(&self) -> f64 {
        match self.tag {
            DivergenceTag::Entropy => 1.0,
            _ => 0.0,
        }
    }

    /// Convex conjugate `f*(y) = sup_{x >= 0} [x y - f(x) + s (x - 1)]` with
    /// `s` the [`conjugate_shift`](Self::conjugate_shift).
    pub fn f_star(&self, y: f64) -> f64 {
        match self.tag {
            DivergenceTag::Entropy => y.exp_m1(),
            DivergenceTag::Power(rho) => {
                let q = Self::q(rho);
                y.max(0.0).powf(q) / q + 1.0 / rho
            }
            DivergenceTag::Custom => (self.custom.as_ref().unwrap().f_star)(y),
        }
    }

    /// `(f*)'(y)`, the primal density produced by dual slack `y`.
    pub fn f_star_prime(&self, y: f64) -> f64 {
        match self.tag {
            DivergenceTag::Entropy => y.exp(),
            DivergenceTag::Power(rho) => y.max(0.0).powf(Self::q(rho) - 1.0),
            DivergenceTag::Custom => (self.custom.as_ref().unwrap().f_star_prime)(y),
        }
    }

    /// `(f*)''(y)` where it exists; used only as a Newton slope.
    pub fn f_star_second(&self, y: f64) -> f64 {
        match self.tag {
            DivergenceTag::Entropy => y.exp(),
            DivergenceTag::Power(rho) => {
                let q = Self::q(rho);
                if y <= 0.0 {
                    0.0
                } else {
                    (q - 1.0) * y.powf(q - 2.0)
                }
            }
            DivergenceTag::Custom => {
                let h = 1e-6 * (1.0 + y.abs());
                (self.f_star_prime(y + h) - self.f_star_prime(y - h)) / (2.0 * h)
            }
        }
    }

    /// `f*_eps(y) = eps f*(y / eps)`.
    pub fn f_star_eps(&self, y: f64, eps: f64) -> f64 {
        eps * self.f_star(y / eps)
    }
}

fn check_invariants(fd: &FDivergence) -> core::result::Result<(), alloc::string::String> {
    let f1 = fd.f(1.0);
    if !(f1.abs() <= 1e-12) {
        return Err(format!("f(1) = {f1}, expected 0"));
    }
    // strict convexity on a geometric grid
    let xs: Vec<f64> = (0..=200).map(|k| 10f64.powf(-3.0 + 6.0 * k as f64 / 200.0)).collect();
    for w in xs.windows(3) {
        let s1 = (fd.f(w[1]) - fd.f(w[0])) / (w[1] - w[0]);
        let s2 = (fd.f(w[2]) - fd.f(w[1])) / (w[2] - w[1]);
        if !(s2 > s1) {
            return Err(format!("f is not strictly convex near x = {}", w[1]));
        }
    }
    // superlinear growth
    let ratios: Vec<f64> = (1..=12).map(|k| {
        let x = 10f64.powi(k);
        fd.f(x) / x
    }).collect();
    if ratios.windows(2).any(|r| !(r[1] > r[0])) || !(ratios[11] > ratios[0] + 1.0) {
        return Err("f(x)/x does not grow without bound".into());
    }
    // Fenchel-Young inequality and equality at y = g'(x), g = f - s (x - 1)
    let shift = fd.conjugate_shift();
    let g = |x: f64| fd.f(x) - shift * (x - 1.0);
    for i in 0..100 {
        let x = 10.0 * i as f64 / 99.0;
        for j in 0..100 {
            let y = -5.0 + 10.0 * j as f64 / 99.0;
            let slack = g(x) + fd.f_star(y) - x * y;
            if !(slack >= -1e-9 * (1.0 + (x * y).abs())) {
                return Err(format!("Fenchel-Young fails at x = {x}, y = {y}"));
            }
        }
        if x > 0.0 {
            let y = fd.f_prime(x) - shift;
            let slack = g(x) + fd.f_star(y) - x * y;
            if !(slack.abs() <= 1e-8 * (1.0 + (x * y).abs())) {
                return Err(format!("Fenchel-Young equality fails at x = {x} (gap {slack:e})"));
            }
        }
    }
    // conjugate derivative consistency
    for j in 0..50 {
        let y = -5.0 + 10.0 * j as f64 / 49.0;
        let h = 1e-5;
        let num = (fd.f_star(y + h) - fd.f_star(y - h)) / (2.0 * h);
        let given = fd.f_star_prime(y);
        if !((num - given).abs() <= 1e-5 * (1.0 + given.abs())) {
            return Err(format!("f_star_prime disagrees with f_star at y = {y}"));
        }
    }
    Ok(())
}

fn infer_flags(fd: &FDivergence) -> Flags {
    let xs: Vec<f64> = (0..=400).map(|k| 10f64.powf(-3.0 + 7.0 * k as f64 / 400.0)).collect();
    let phis: Vec<f64> = xs.iter().map(|&x| fd.phi(x)).collect();
    let nondecreasing = phis.windows(2).all(|w| w[1] >= w[0] - 1e-12 * (1.0 + w[0].abs()));
    let concave = (1..xs.len() - 1).all(|k| {
        let s1 = (phis[k] - phis[k - 1]) / (xs[k] - xs[k - 1]);
        let s2 = (phis[k + 1] - phis[k]) / (xs[k + 1] - xs[k]);
        s2 <= s1 + 1e-9 * (1.0 + s1.abs())
    });
    Flags {
        phi_nondecreasing: nondecreasing,
        phi_concave: concave,
    }
}

/// Runs the invariant battery (used to vet builtins in tests, and custom
/// generators at construction).
pub fn verify(fd: &FDivergence) -> Result<()> {
    check_invariants(fd).map_err(Error::InvalidDivergence)
}

fn same_supports(a: &Coupling, b: &Coupling) -> bool {
    a.n_marginals() == b.n_marginals()
        && a
            .marginals()
            .iter()
            .zip(b.marginals())
            .all(|(x, y)| x.dim() == y.dim() && x.coords() == y.coords())
}

/// `D_f(pi, reference)`, or `+inf` when `pi` charges an atom the reference does not.
pub fn eval_divergence(pi: &Coupling, reference: &Coupling, fd: &FDivergence) -> Result<Extended> {
    if !same_supports(pi, reference) {
        return Err(Error::SupportMismatch);
    }
    let (pk, pw) = (pi.keys(), pi.weights());
    let (rk, rw) = (reference.keys(), reference.weights());
    let mut terms = Vec::with_capacity(rk.len());
    let mut a = 0;
    for (k, &key) in rk.iter().enumerate() {
        if a < pk.len() && pk[a] < key {
            return Ok(Extended::Infinite);
        }
        let w = if a < pk.len() && pk[a] == key {
            a += 1;
            pw[a - 1]
        } else {
            0.0
        };
        terms.push(fd.f(w / rw[k]) * rw[k]);
    }
    if a < pk.len() {
        return Ok(Extended::Infinite);
    }
    Ok(Extended::Finite(kahan_sum(terms)))
}

/// `D_f(pi, mu_1 ⊗ ... ⊗ mu_N)` without materializing the product.
pub fn divergence_to_product(pi: &Coupling, fd: &FDivergence) -> f64 {
    let mut terms = Vec::with_capacity(pi.len() + 1);
    let mut covered = Vec::with_capacity(pi.len());
    for k in 0..pi.len() {
        let p = pi.product_weight(k);
        covered.push(p);
        terms.push(fd.f(pi.weight(k) / p) * p);
    }
    let rest = (1.0 - kahan_sum(covered)).max(0.0);
    terms.push(fd.f(0.0) * rest);
    kahan_sum(terms)
}

/// Upper bound on `D_f(pi, P)` for couplings whose marginals `2..N` have
/// `sizes` atoms (uniformly weighted for [`CapMode::EmpiricalProduct`]).
pub fn divergence_cap(fd: &FDivergence, mode: CapMode, sizes: &[usize]) -> Result<f64> {
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(Error::InvalidArgument("divergence cap needs positive sizes n_2..n_N".into()));
    }
    let flags = fd.flags();
    match mode {
        CapMode::TwoMarginalConcave => {
            if sizes.len() != 1 || !flags.phi_nondecreasing || !flags.phi_concave {
                return Err(Error::FlagViolation("the two-marginal concave cap"));
            }
            Ok(fd.phi(sizes[0] as f64))
        }
        CapMode::EmpiricalProduct => {
            if !flags.phi_nondecreasing {
                return Err(Error::FlagViolation("the empirical product cap"));
            }
            Ok(fd.phi(sizes.iter().map(|&n| n as f64).product()))
        }
        CapMode::EntropicChain => {
            if !fd.is_entropy() {
                return Err(Error::FlagViolation("the entropic chain cap"));
            }
            Ok(sizes.iter().map(|&n| (n as f64).ln()).sum())
        }
    }
}
