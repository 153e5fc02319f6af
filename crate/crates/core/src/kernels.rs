//! Spatio-temporal delay kernels Γ(τ, y) represented by weighted atoms.
//!
//! Everything downstream touches the kernel only through its exponential
//! moments `∑ w e^{p y + q τ}`, so a kernel is stored as a finite list of
//! quadrature atoms whose weights sum to one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest exponent accepted by [`DelayKernel::mgf`] before reporting an
/// out-of-range evaluation.
pub const EXPONENT_LIMIT: f64 = 700.0;

const MASS_TOL: f64 = 1e-12;

/// One quadrature node of the kernel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub tau: f64,
    pub y: f64,
    pub weight: f64,
}

/// Kernel descriptor as read from a run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// No delayed term at all.
    None,
    PointMass { tau: f64, y: f64 },
    /// Uniform density on `[0, tau0] x [y_min, y_max]`, trapezoid nodes.
    Uniform {
        tau0: f64,
        y_min: f64,
        y_max: f64,
        n_tau: i64,
        n_y: i64,
    },
    /// Density proportional to `exp(-rate tau) exp(-y^2 / (2 sigma^2))` on
    /// `[0, tau0] x [-y_max, y_max]`, trapezoid nodes.
    GaussExp {
        tau0: f64,
        rate: f64,
        sigma: f64,
        y_max: f64,
        n_tau: i64,
        n_y: i64,
    },
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::None
    }
}

/// Closed forms of the moment generating function, kept for oracle checks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AnalyticMgf {
    PointMass { tau: f64, y: f64 },
    UniformBox { tau0: f64, y_min: f64, y_max: f64 },
}

impl AnalyticMgf {
    pub fn eval(&self, p: f64, q: f64) -> f64 {
        match *self {
            AnalyticMgf::PointMass { tau, y } => (p * y + q * tau).exp(),
            AnalyticMgf::UniformBox { tau0, y_min, y_max } => {
                mean_exp(q, 0.0, tau0) * mean_exp(p, y_min, y_max)
            }
        }
    }
}

/// Mean of `e^{k z}` over `z` uniform on `[a, b]`.
fn mean_exp(k: f64, a: f64, b: f64) -> f64 {
    let len = b - a;
    if len == 0.0 {
        return (k * a).exp();
    }
    let x = k * len;
    if x.abs() < 1e-8 {
        (k * a).exp() * (1.0 + 0.5 * x)
    } else {
        (k * a).exp() * x.exp_m1() / x
    }
}

/// Exponential moments and their first and second derivatives.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    pub m: f64,
    pub dp: f64,
    pub dq: f64,
    pub dpp: f64,
    pub dpq: f64,
    pub dqq: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DelayKernel {
    atoms: Vec<Atom>,
    tau0: f64,
    symmetric_y: bool,
    analytic: Option<AnalyticMgf>,
    /// Declared `tau1` of a one-sided kernel (no mass at `y < 0` for
    /// `tau <= tau1`). Only verified against the atoms, never inferred.
    one_sided_tau1: Option<f64>,
}

impl DelayKernel {
    /// The kernel of a model without a delayed term.
    pub fn absent() -> Self {
        DelayKernel {
            atoms: Vec::new(),
            tau0: 0.0,
            symmetric_y: true,
            analytic: None,
            one_sided_tau1: None,
        }
    }

    pub fn point_mass(tau: f64, y: f64) -> Result<Self> {
        Self::from_spec(&KernelSpec::PointMass { tau, y })
    }

    pub fn from_spec(spec: &KernelSpec) -> Result<Self> {
        match *spec {
            KernelSpec::None => Ok(Self::absent()),
            KernelSpec::PointMass { tau, y } => {
                if !(tau.is_finite() && y.is_finite()) || tau < 0.0 {
                    return Err(Error::InvalidKernel(format!("point mass at tau = {tau}, y = {y}")));
                }
                if tau == 0.0 && y == 0.0 {
                    // a delay-free point mass still needs a positive horizon
                    return Self::from_atoms(vec![Atom { tau, y, weight: 1.0 }], f64::MIN_POSITIVE);
                }
                let mut k = Self::from_atoms(vec![Atom { tau, y, weight: 1.0 }], tau.max(f64::MIN_POSITIVE))?;
                k.analytic = Some(AnalyticMgf::PointMass { tau, y });
                Ok(k)
            }
            KernelSpec::Uniform { tau0, y_min, y_max, n_tau, n_y } => {
                check_box(tau0, -y_min.abs().max(y_max.abs()), y_min, y_max)?;
                let taus = trapezoid(0.0, tau0, n_tau, "n_tau")?;
                let ys = trapezoid(y_min, y_max, n_y, "n_y")?;
                let atoms = tensor(&taus, &ys, |_, _| 1.0);
                let mut k = Self::from_atoms(atoms, tau0)?;
                k.symmetric_y = y_min == -y_max;
                k.analytic = Some(AnalyticMgf::UniformBox { tau0, y_min, y_max });
                Ok(k)
            }
            KernelSpec::GaussExp { tau0, rate, sigma, y_max, n_tau, n_y } => {
                check_box(tau0, -y_max, -y_max, y_max)?;
                if !(sigma > 0.0) || !rate.is_finite() {
                    return Err(Error::InvalidKernel(format!("sigma = {sigma}, rate = {rate}")));
                }
                let taus = trapezoid(0.0, tau0, n_tau, "n_tau")?;
                let ys = trapezoid(-y_max, y_max, n_y, "n_y")?;
                let atoms = tensor(&taus, &ys, |t, y| (-rate * t - 0.5 * (y / sigma).powi(2)).exp());
                Self::from_atoms(atoms, tau0)
            }
        }
    }

    /// Builds a kernel from raw atoms, renormalizing the weights to unit mass.
    pub fn from_atoms(mut atoms: Vec<Atom>, tau0: f64) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidKernel("empty atom list (use DelayKernel::absent)".into()));
        }
        if !(tau0 > 0.0) || !tau0.is_finite() {
            return Err(Error::InvalidKernel(format!("delay horizon tau0 = {tau0} must be positive")));
        }
        for a in &atoms {
            if !(a.weight >= 0.0) || !a.weight.is_finite() {
                return Err(Error::InvalidKernel(format!("negative or non-finite weight {}", a.weight)));
            }
            if !(a.tau >= 0.0 && a.tau <= tau0) || !a.y.is_finite() {
                return Err(Error::InvalidKernel(format!(
                    "atom (tau = {}, y = {}) outside [0, {tau0}] x R",
                    a.tau, a.y
                )));
            }
        }
        let mass: f64 = atoms.iter().map(|a| a.weight).sum();
        if !(mass > 0.0) {
            return Err(Error::InvalidKernel("kernel has zero mass".into()));
        }
        for a in &mut atoms {
            a.weight /= mass;
        }
        let symmetric_y = is_symmetric(&atoms);
        Ok(DelayKernel {
            atoms,
            tau0,
            symmetric_y,
            analytic: None,
            one_sided_tau1: None,
        })
    }

    /// Declares the kernel one-sided up to `tau1`; fails if an atom with
    /// `tau <= tau1` sits at `y < 0`.
    pub fn declare_one_sided(mut self, tau1: f64) -> Result<Self> {
        if !(tau1 > 0.0 && tau1 <= self.tau0) {
            return Err(Error::InvalidKernel(format!("tau1 = {tau1} not in (0, {}]", self.tau0)));
        }
        if !self.support_one_sided(tau1) {
            return Err(Error::InvalidKernel(format!("kernel has mass at y < 0 for tau <= {tau1}")));
        }
        self.one_sided_tau1 = Some(tau1);
        Ok(self)
    }

    pub fn support_one_sided(&self, tau1: f64) -> bool {
        self.atoms.iter().all(|a| !(a.tau <= tau1 && a.y < 0.0 && a.weight > 0.0))
    }

    pub fn is_absent(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn tau0(&self) -> f64 {
        self.tau0
    }

    pub fn symmetric_y(&self) -> bool {
        self.symmetric_y
    }

    pub fn analytic(&self) -> Option<AnalyticMgf> {
        self.analytic
    }

    pub fn one_sided_tau1(&self) -> Option<f64> {
        self.one_sided_tau1
    }

    /// Whether some atom carries an actual delay.
    pub fn has_delay(&self) -> bool {
        self.atoms.iter().any(|a| a.tau > 0.0 && a.weight > 0.0)
    }

    /// `∑ w e^{p y + q τ}`; `1` for an absent kernel.
    pub fn mgf(&self, p: f64, q: f64) -> Result<f64> {
        if self.is_absent() {
            return Ok(1.0);
        }
        let mut sum = 0.0;
        for a in &self.atoms {
            sum += a.weight * checked_exp(p, q, p * a.y + q * a.tau)?;
        }
        Ok(sum)
    }

    /// Exponential moment with its first and second partial derivatives.
    pub fn moments(&self, p: f64, q: f64) -> Result<Moments> {
        if self.is_absent() {
            return Ok(Moments { m: 1.0, ..Moments::default() });
        }
        let mut out = Moments::default();
        for a in &self.atoms {
            let e = a.weight * checked_exp(p, q, p * a.y + q * a.tau)?;
            out.m += e;
            out.dp += a.y * e;
            out.dq += a.tau * e;
            out.dpp += a.y * a.y * e;
            out.dpq += a.y * a.tau * e;
            out.dqq += a.tau * a.tau * e;
        }
        Ok(out)
    }
}

fn checked_exp(p: f64, q: f64, exponent: f64) -> Result<f64> {
    if exponent > EXPONENT_LIMIT || exponent.is_nan() {
        return Err(Error::Overflow { p, q, exponent });
    }
    Ok(exponent.exp())
}

fn check_box(tau0: f64, _ext: f64, y_min: f64, y_max: f64) -> Result<()> {
    if !(tau0 > 0.0) || !tau0.is_finite() {
        return Err(Error::InvalidKernel(format!("delay horizon tau0 = {tau0} must be positive")));
    }
    if !(y_min <= y_max) || !y_min.is_finite() || !y_max.is_finite() {
        return Err(Error::InvalidKernel(format!("bad y-range [{y_min}, {y_max}]")));
    }
    Ok(())
}

/// Trapezoid nodes and weights on `[a, b]`; one node means the midpoint.
fn trapezoid(a: f64, b: f64, n: i64, name: &str) -> Result<Vec<(f64, f64)>> {
    if n <= 0 {
        return Err(Error::InvalidKernel(format!("{name} = {n} must be positive")));
    }
    if n == 1 || a == b {
        return Ok(vec![(0.5 * (a + b), 1.0)]);
    }
    let n = n as usize;
    let h = (b - a) / (n - 1) as f64;
    Ok((0..n)
        .map(|i| {
            let x = if i == n - 1 { b } else { a + i as f64 * h };
            let w = if i == 0 || i == n - 1 { 0.5 * h } else { h };
            (x, w)
        })
        .collect())
}

fn tensor(taus: &[(f64, f64)], ys: &[(f64, f64)], density: impl Fn(f64, f64) -> f64) -> Vec<Atom> {
    let mut atoms = Vec::with_capacity(taus.len() * ys.len());
    for &(tau, wt) in taus {
        for &(y, wy) in ys {
            atoms.push(Atom { tau, y, weight: wt * wy * density(tau, y) });
        }
    }
    atoms
}

fn is_symmetric(atoms: &[Atom]) -> bool {
    // each atom needs a mirror partner of equal weight
    atoms.iter().all(|a| {
        a.y == 0.0
            || atoms.iter().any(|b| {
                b.tau == a.tau && (b.y + a.y).abs() <= 1e-14 * a.y.abs() && (b.weight - a.weight).abs() <= MASS_TOL
            })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uniform(n: i64) -> DelayKernel {
        DelayKernel::from_spec(&KernelSpec::Uniform { tau0: 1.0, y_min: -1.0, y_max: 1.0, n_tau: n, n_y: n }).unwrap()
    }

    #[test]
    fn point_mass_is_single_atom() {
        let k = DelayKernel::point_mass(1.0, 0.0).unwrap();
        assert_eq!(k.atoms(), &[Atom { tau: 1.0, y: 0.0, weight: 1.0 }]);
        assert!((k.mgf(2.0, -3.0).unwrap() - (-3f64).exp()).abs() < 1e-15);
        assert!((k.mgf(2.0, -3.0).unwrap() - 0.049_787).abs() < 1e-6);
    }

    #[test]
    fn uniform_box_has_unit_mass_at_any_resolution() {
        for n in [1, 2, 3, 7, 40] {
            let k = uniform(n);
            let mass: f64 = k.atoms().iter().map(|a| a.weight).sum();
            assert!((mass - 1.0).abs() < 1e-12, "n = {n}");
            assert!((k.mgf(0.0, 0.0).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_box_mgf_approaches_sinh() {
        // ∫_{-1}^{1} e^y dy / 2 = sinh(1); trapezoid error is O(h^2)
        let exact = 1f64.sinh();
        let mut prev_err = f64::INFINITY;
        for n in [11, 41, 161, 641] {
            let err = (uniform(n).mgf(1.0, 0.0).unwrap() - exact).abs();
            assert!(err < prev_err);
            prev_err = err;
        }
        assert!(prev_err < 1e-6);
        assert!((exact - 1.175_201).abs() < 1e-6);
        let a = uniform(2).analytic().unwrap();
        assert!((a.eval(1.0, 0.0) - exact).abs() < 1e-15);
    }

    #[test]
    fn absent_kernel_has_unit_mgf() {
        let k = DelayKernel::absent();
        assert!(k.is_absent());
        assert_eq!(k.mgf(3.0, -7.0).unwrap(), 1.0);
        assert!(!k.has_delay());
    }

    #[test]
    fn construction_errors() {
        let bad_n = KernelSpec::Uniform { tau0: 1.0, y_min: -1.0, y_max: 1.0, n_tau: 0, n_y: 3 };
        assert!(DelayKernel::from_spec(&bad_n).is_err());
        let bad_tau = KernelSpec::Uniform { tau0: 0.0, y_min: -1.0, y_max: 1.0, n_tau: 3, n_y: 3 };
        assert!(DelayKernel::from_spec(&bad_tau).is_err());
        let neg = vec![Atom { tau: 0.5, y: 0.0, weight: -0.1 }, Atom { tau: 0.5, y: 1.0, weight: 1.1 }];
        assert!(DelayKernel::from_atoms(neg, 1.0).is_err());
        let outside = vec![Atom { tau: 2.0, y: 0.0, weight: 1.0 }];
        assert!(DelayKernel::from_atoms(outside, 1.0).is_err());
    }

    #[test]
    fn overflow_is_reported() {
        let k = DelayKernel::point_mass(1.0, 0.0).unwrap();
        assert!(matches!(k.mgf(0.0, 701.0), Err(Error::Overflow { .. })));
        assert!(k.mgf(0.0, 699.0).is_ok());
    }

    #[test]
    fn derivative_in_q_matches_finite_difference() {
        let k = DelayKernel::from_spec(&KernelSpec::GaussExp {
            tau0: 2.0,
            rate: 0.7,
            sigma: 0.8,
            y_max: 4.0,
            n_tau: 9,
            n_y: 17,
        })
        .unwrap();
        for &(p, q) in &[(0.3, -0.5), (-1.2, 0.4), (2.0, -2.0)] {
            let h = 1e-5;
            let fd = (k.mgf(p, q + h).unwrap() - k.mgf(p, q - h).unwrap()) / (2.0 * h);
            let exact = k.moments(p, q).unwrap().dq;
            assert!(((fd - exact) / exact).abs() < 1e-6, "p = {p}, q = {q}");
        }
    }

    #[test]
    fn one_sided_support_check() {
        let k = DelayKernel::from_spec(&KernelSpec::Uniform { tau0: 1.0, y_min: 0.0, y_max: 2.0, n_tau: 5, n_y: 5 })
            .unwrap();
        assert!(!k.symmetric_y());
        let k = k.declare_one_sided(0.5).unwrap();
        assert_eq!(k.one_sided_tau1(), Some(0.5));
        assert!(uniform(5).declare_one_sided(0.5).is_err());
    }

    #[test]
    fn truncated_gaussian_against_fine_quadrature() {
        let gauss = |n_y| {
            DelayKernel::from_spec(&KernelSpec::GaussExp { tau0: 1.0, rate: 0.0, sigma: 1.0, y_max: 6.0, n_tau: 1, n_y })
                .unwrap()
        };
        let coarse = gauss(64).mgf(1.0, 0.0).unwrap();
        let fine = gauss(4096).mgf(1.0, 0.0).unwrap();
        assert!((coarse - fine).abs() < 1e-6);
        // the truncation at ±6 barely moves e^{1/2}
        assert!((fine - 0.5f64.exp()).abs() < 1e-6);
    }

    fn arb_kernel() -> impl Strategy<Value = DelayKernel> {
        prop::collection::vec((0.0f64..2.0, -2.0f64..2.0, 0.01f64..1.0), 1..8).prop_map(|raw| {
            let atoms = raw.into_iter().map(|(tau, y, weight)| Atom { tau, y, weight }).collect();
            DelayKernel::from_atoms(atoms, 2.0).unwrap()
        })
    }

    proptest! {
        #[test]
        fn mgf_is_jointly_convex(k in arb_kernel(), p1 in -3.0f64..3.0, q1 in -3.0f64..3.0,
                                 p2 in -3.0f64..3.0, q2 in -3.0f64..3.0) {
            let mid = k.mgf(0.5 * (p1 + p2), 0.5 * (q1 + q2)).unwrap();
            let avg = 0.5 * (k.mgf(p1, q1).unwrap() + k.mgf(p2, q2).unwrap());
            prop_assert!(mid <= avg + 1e-12 * avg.max(1.0));
        }

        #[test]
        fn mgf_increases_in_q(k in arb_kernel(), p in -3.0f64..3.0, q in -3.0f64..3.0, dq in 0.01f64..1.0) {
            prop_assume!(k.has_delay());
            prop_assert!(k.mgf(p, q + dq).unwrap() > k.mgf(p, q).unwrap());
        }

        #[test]
        fn weights_are_normalized(k in arb_kernel()) {
            let mass: f64 = k.atoms().iter().map(|a| a.weight).sum();
            prop_assert!((mass - 1.0).abs() <= 1e-12);
            prop_assert!(k.atoms().iter().all(|a| a.weight >= 0.0 && a.tau >= 0.0 && a.tau <= k.tau0()));
        }

        #[test]
        fn symmetric_kernels_have_even_mgf(y in 0.1f64..3.0, n in 1i64..12, p in -3.0f64..3.0, q in -3.0f64..1.0) {
            let k = DelayKernel::from_spec(&KernelSpec::Uniform { tau0: 1.5, y_min: -y, y_max: y, n_tau: 3, n_y: n })
                .unwrap();
            prop_assert!(k.symmetric_y());
            let a = k.mgf(p, q).unwrap();
            prop_assert!((a - k.mgf(-p, q).unwrap()).abs() <= 1e-12 * a.max(1.0));
        }
    }
}
