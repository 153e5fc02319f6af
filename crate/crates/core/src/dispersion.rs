//! The implicit dispersion relation
//! `Δ(λ, p) = −λ + p² + r1 + r2 ∑ w e^{p y − λ τ} = 0`
//! and the quantities derived from its root `λ(p)`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::kernels::DelayKernel;
use crate::roots::{bisect, golden_section, newton_bisect};

const MAX_DOUBLINGS: usize = 200;

/// Minimizer of `λ(p)/p` over `p > 0` and the minimal speed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MuStar {
    pub mu: f64,
    pub c: f64,
}

#[derive(Debug)]
pub struct DispersionRelation {
    r1: f64,
    r2: f64,
    kernel: Arc<DelayKernel>,
    // keyed on the exact bit pattern of p so cached and fresh solves agree
    cache: Mutex<HashMap<u64, f64>>,
    mu_star: OnceLock<MuStar>,
}

impl Clone for DispersionRelation {
    fn clone(&self) -> Self {
        DispersionRelation {
            r1: self.r1,
            r2: self.r2,
            kernel: Arc::clone(&self.kernel),
            cache: Mutex::new(HashMap::new()),
            mu_star: self.mu_star.clone(),
        }
    }
}

impl DispersionRelation {
    pub fn new(r1: f64, r2: f64, kernel: Arc<DelayKernel>) -> Result<Self> {
        if !r1.is_finite() || !r2.is_finite() {
            return Err(Error::Precondition(format!("growth rates must be finite (r1 = {r1}, r2 = {r2})")));
        }
        if r2 < 0.0 {
            return Err(Error::Precondition(format!("r2 = {r2} must be non-negative")));
        }
        if kernel.is_absent() && r2 != 0.0 {
            return Err(Error::Precondition(format!("r2 = {r2} requires a delay kernel")));
        }
        Ok(DispersionRelation {
            r1,
            r2,
            kernel,
            cache: Mutex::new(HashMap::new()),
            mu_star: OnceLock::new(),
        })
    }

    /// `λ(p) = p² + r0`, the relation of the classical Fisher-KPP equation.
    pub fn kpp(r0: f64) -> Self {
        Self::new(r0, 0.0, Arc::new(DelayKernel::absent())).expect("finite r0")
    }

    pub fn r1(&self) -> f64 {
        self.r1
    }

    pub fn r2(&self) -> f64 {
        self.r2
    }

    pub fn kernel(&self) -> &Arc<DelayKernel> {
        &self.kernel
    }

    fn is_quadratic(&self) -> bool {
        self.r2 == 0.0
    }

    pub fn delta(&self, lam: f64, p: f64) -> Result<f64> {
        let mut d = -lam + p * p + self.r1;
        if !self.is_quadratic() {
            d += self.r2 * self.kernel.mgf(p, -lam)?;
        }
        Ok(d)
    }

    /// `(Δ, ∂λΔ)` at `(lam, p)`.
    fn delta_dlam(&self, lam: f64, p: f64) -> Result<(f64, f64)> {
        let m = self.kernel.moments(p, -lam)?;
        Ok((-lam + p * p + self.r1 + self.r2 * m.m, -1.0 - self.r2 * m.dq))
    }

    pub fn lambda(&self, p: f64) -> Result<f64> {
        if self.is_quadratic() {
            return Ok(p * p + self.r1);
        }
        let key = p.to_bits();
        if let Some(&lam) = self.cache.lock().expect("cache poisoned").get(&key) {
            return Ok(lam);
        }
        let lam = self.solve_lambda(p)?;
        self.cache.lock().expect("cache poisoned").insert(key, lam);
        Ok(lam)
    }

    fn solve_lambda(&self, p: f64) -> Result<f64> {
        // Δ ≥ r2·M > 0 at λ = p² + r1 − 1; the upper end uses M(p, −λ) ≤ M(p, 0) for λ ≥ 0
        let lo = p * p + self.r1 - 1.0;
        let mut hi = (p * p + self.r1 + self.r2 * self.kernel.mgf(p, 0.0)?).max(0.0) + 1.0;
        let mut doublings = 0;
        while self.delta(hi, p)? > 0.0 {
            doublings += 1;
            if doublings > MAX_DOUBLINGS {
                return Err(Error::BracketExpansion { what: "lambda(p)", doublings });
            }
            hi = lo + 2.0 * (hi - lo);
        }
        let ftol = 1e-14 * (1.0 + p * p + self.r1.abs());
        newton_bisect(|lam| self.delta_dlam(lam, p), lo, hi, ftol, "lambda(p)")
    }

    /// `λ′(p) = −∂pΔ / ∂λΔ`.
    pub fn lambda_prime(&self, p: f64) -> Result<f64> {
        if self.is_quadratic() {
            return Ok(2.0 * p);
        }
        let lam = self.lambda(p)?;
        let m = self.kernel.moments(p, -lam)?;
        Ok((2.0 * p + self.r2 * m.dp) / (1.0 + self.r2 * m.dq))
    }

    /// `λ″(p)` from differentiating the relation twice.
    pub fn lambda_second(&self, p: f64) -> Result<f64> {
        if self.is_quadratic() {
            return Ok(2.0);
        }
        let lam = self.lambda(p)?;
        let m = self.kernel.moments(p, -lam)?;
        let d1 = (2.0 * p + self.r2 * m.dp) / (1.0 + self.r2 * m.dq);
        let num = 2.0 + self.r2 * (m.dpp - 2.0 * m.dpq * d1 + m.dqq * d1 * d1);
        Ok(num / (1.0 + self.r2 * m.dq))
    }

    /// `Ψ(s)`, the inverse of `λ′`.
    pub fn psi(&self, s: f64) -> Result<f64> {
        if self.is_quadratic() {
            return Ok(0.5 * s);
        }
        let (mut lo, mut hi) = (-1.0f64, 1.0f64);
        let mut doublings = 0;
        while self.lambda_prime(lo)? > s {
            doublings += 1;
            if doublings > MAX_DOUBLINGS {
                return Err(Error::BracketExpansion { what: "psi(s)", doublings });
            }
            hi = hi.min(lo);
            lo *= 2.0;
        }
        while self.lambda_prime(hi)? < s {
            doublings += 1;
            if doublings > MAX_DOUBLINGS {
                return Err(Error::BracketExpansion { what: "psi(s)", doublings });
            }
            lo = lo.max(hi);
            hi *= 2.0;
        }
        let ftol = 1e-13 * (1.0 + s.abs());
        newton_bisect(
            |p| Ok((self.lambda_prime(p)? - s, self.lambda_second(p)?)),
            lo,
            hi,
            ftol,
            "psi(s)",
        )
    }

    /// Minimizer `μ*` of `λ(p)/p` and `c* = λ(μ*)/μ*`.
    pub fn mu_star(&self) -> Result<MuStar> {
        if let Some(m) = self.mu_star.get() {
            return Ok(*m);
        }
        let m = self.compute_mu_star()?;
        let _ = self.mu_star.set(m);
        Ok(m)
    }

    fn compute_mu_star(&self) -> Result<MuStar> {
        let lam0 = self.lambda(0.0)?;
        if !(lam0 > 0.0) {
            return Err(Error::Precondition(format!(
                "lambda(0) = {lam0:e} is not positive; the minimal speed is undefined"
            )));
        }
        if self.is_quadratic() {
            let mu = self.r1.sqrt();
            return Ok(MuStar { mu, c: 2.0 * mu });
        }
        let ratio = |p: f64| -> Result<f64> { Ok(self.lambda(p)? / p) };

        // geometric scan until λ(p)/p turns upward
        let mut p_prev = 0.0;
        let mut p = 1e-4;
        let mut f = ratio(p)?;
        let mut doublings = 0;
        let (a, b) = loop {
            let p_next = 2.0 * p;
            let f_next = ratio(p_next)?;
            if f_next > f {
                break (p_prev, p_next);
            }
            doublings += 1;
            if doublings > MAX_DOUBLINGS {
                return Err(Error::BracketExpansion { what: "mu_star", doublings });
            }
            p_prev = p;
            p = p_next;
            f = f_next;
        };
        let a = a.max(1e-12);
        let g = golden_section(ratio, a, b, 1e-10)?;

        // polish on the stationarity condition λ′(p) p − λ(p) = 0, increasing in p
        let stat = |p: f64| -> Result<f64> { Ok(self.lambda_prime(p)? * p - self.lambda(p)?) };
        let mut width = 1e-8 * (1.0 + g.x);
        let mut lo = (g.x - width).max(a);
        let mut hi = (g.x + width).min(b);
        let mut tries = 0;
        while stat(lo)? > 0.0 || stat(hi)? < 0.0 {
            tries += 1;
            if tries > 60 {
                return Err(Error::BracketExpansion { what: "mu_star", doublings: tries });
            }
            width *= 2.0;
            lo = (g.x - width).max(a);
            hi = (g.x + width).min(b);
        }
        let mu = bisect(stat, lo, hi, "mu_star")?;
        let lam = self.lambda(mu)?;
        let c = lam / mu;
        let defect = (self.lambda_prime(mu)? * mu - lam).abs();
        if defect > 1e-8 * (1.0 + lam.abs()) {
            return Err(Error::NonConvergence { defect, tol: 1e-8 * (1.0 + lam.abs()), steps: 0 });
        }
        Ok(MuStar { mu, c })
    }
}

/// `λ(p)` and `λ′(p)` tabulated on a uniform grid and interpolated by cubic
/// Hermite splines. Outside the grid the relation is solved directly.
#[derive(Clone, Debug)]
pub struct LambdaTable {
    rel: DispersionRelation,
    p_min: f64,
    dp: f64,
    lam: Vec<f64>,
    dlam: Vec<f64>,
    ddlam: Vec<f64>,
}

impl LambdaTable {
    pub fn new(rel: DispersionRelation, p_min: f64, p_max: f64, dp: f64) -> Result<Self> {
        if !(p_max > p_min) || !(dp > 0.0) {
            return Err(Error::Precondition(format!("bad table range [{p_min}, {p_max}] step {dp}")));
        }
        let n = ((p_max - p_min) / dp).ceil() as usize + 1;
        let mut lam = Vec::with_capacity(n);
        let mut dlam = Vec::with_capacity(n);
        let mut ddlam = Vec::with_capacity(n);
        for i in 0..n {
            let p = p_min + i as f64 * dp;
            lam.push(rel.lambda(p)?);
            dlam.push(rel.lambda_prime(p)?);
            ddlam.push(rel.lambda_second(p)?);
        }
        Ok(LambdaTable { rel, p_min, dp, lam, dlam, ddlam })
    }

    pub fn relation(&self) -> &DispersionRelation {
        &self.rel
    }

    pub fn p_max(&self) -> f64 {
        self.p_min + (self.lam.len() - 1) as f64 * self.dp
    }

    /// `(λ(p), λ′(p))`.
    pub fn eval(&self, p: f64) -> Result<(f64, f64)> {
        if self.rel.is_quadratic() {
            return Ok((p * p + self.rel.r1, 2.0 * p));
        }
        let x = (p - self.p_min) / self.dp;
        if !(x >= 0.0) || x >= (self.lam.len() - 1) as f64 {
            return Ok((self.rel.lambda(p)?, self.rel.lambda_prime(p)?));
        }
        let i = x as usize;
        let t = x - i as f64;
        let h = self.dp;
        // λ from its values and slopes, λ′ from its values and curvatures
        let (y0, y1, m0, m1) = (self.lam[i], self.lam[i + 1], self.dlam[i], self.dlam[i + 1]);
        let (k0, k1) = (self.ddlam[i], self.ddlam[i + 1]);
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let lam = h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1;
        let dlam = h00 * m0 + h10 * h * k0 + h01 * m1 + h11 * h * k1;
        Ok((lam, dlam))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;
    use proptest::prelude::*;

    const OMEGA: f64 = 0.567_143_290_409_783_8;

    fn delayed(r1: f64, r2: f64) -> DispersionRelation {
        DispersionRelation::new(r1, r2, Arc::new(DelayKernel::point_mass(1.0, 0.0).unwrap())).unwrap()
    }

    fn box_kernel() -> Arc<DelayKernel> {
        Arc::new(
            DelayKernel::from_spec(&KernelSpec::Uniform { tau0: 1.0, y_min: -1.0, y_max: 1.0, n_tau: 9, n_y: 9 })
                .unwrap(),
        )
    }

    #[test]
    fn delta_examples() {
        assert_eq!(DispersionRelation::kpp(1.0).delta(2.0, 1.0).unwrap(), 0.0);
        assert!(delayed(0.0, 1.0).delta(OMEGA, 0.0).unwrap().abs() < 1e-15);
        let rel = DispersionRelation::new(0.3, 0.8, box_kernel()).unwrap();
        for p in [-2.0, 0.0, 1.5] {
            let step = rel.delta(1.7, p).unwrap() - rel.delta(0.7, p).unwrap();
            assert!(step <= -1.0);
        }
    }

    #[test]
    fn lambda_examples() {
        assert_eq!(DispersionRelation::kpp(1.0).lambda(0.5).unwrap(), 1.25);
        assert!((delayed(0.0, 1.0).lambda(0.0).unwrap() - OMEGA).abs() < 1e-14);
        let lam = delayed(-0.5, 1.5).lambda(0.0).unwrap();
        assert!((lam - 0.453_295_479_524_905_5).abs() < 1e-14);
        assert!((lam - (-0.5 + 1.5 * (-lam).exp())).abs() < 1e-14);
    }

    #[test]
    fn absent_kernel_with_delayed_rate_is_rejected() {
        assert!(DispersionRelation::new(0.2, 0.5, Arc::new(DelayKernel::absent())).is_err());
        assert!(DispersionRelation::new(0.2, -0.5, box_kernel()).is_err());
    }

    #[test]
    fn lambda_prime_examples() {
        assert_eq!(DispersionRelation::kpp(3.0).lambda_prime(1.0).unwrap(), 2.0);
        assert!(DispersionRelation::new(0.1, 0.9, box_kernel()).unwrap().lambda_prime(0.0).unwrap().abs() < 1e-15);
    }

    #[test]
    fn mu_star_examples() {
        let m = DispersionRelation::kpp(1.0).mu_star().unwrap();
        assert_eq!((m.mu, m.c), (1.0, 2.0));
        let m = DispersionRelation::kpp(0.25).mu_star().unwrap();
        assert_eq!((m.mu, m.c), (0.5, 1.0));
        let m = delayed(-0.5, 1.5).mu_star().unwrap();
        assert!((m.mu - 0.831_713_701_346_478_7).abs() < 1e-9);
        assert!((m.c - 1.009_461_954_154_126_3).abs() < 1e-12);
        let m = delayed(0.0, 1.0).mu_star().unwrap();
        assert!((m.mu - 0.844_787_428_884_833_8).abs() < 1e-9);
        assert!((m.c - 1.254_860_434_290_065_4).abs() < 1e-12);
    }

    #[test]
    fn mu_star_against_grid_scan() {
        let rel = delayed(-0.5, 1.5);
        let m = rel.mu_star().unwrap();
        let mut best = (f64::INFINITY, 0.0);
        for k in 1..=100_000 {
            let p = k as f64 * 1e-4;
            let v = rel.lambda(p).unwrap() / p;
            if v < best.0 {
                best = (v, p);
            }
        }
        assert!((best.1 - m.mu).abs() <= 1e-4);
        assert!(m.c <= best.0 + 1e-14);
        assert!(best.0 - m.c < 1e-8);
    }

    #[test]
    fn nonpositive_lambda_zero_is_reported() {
        let rel = DispersionRelation::kpp(-0.1);
        assert!(matches!(rel.mu_star(), Err(Error::Precondition(_))));
    }

    #[test]
    fn psi_examples() {
        assert_eq!(DispersionRelation::kpp(1.0).psi(3.0).unwrap(), 1.5);
        let rel = delayed(0.0, 1.0);
        // dense tabulation of λ′ and inverse interpolation
        let ps: Vec<f64> = (0..=4000).map(|k| -2.0 + k as f64 * 1e-3).collect();
        let ds: Vec<f64> = ps.iter().map(|&p| rel.lambda_prime(p).unwrap()).collect();
        for s in [-1.5, -0.2, 0.0, 0.7, 2.0] {
            let j = ds.iter().position(|&d| d >= s).unwrap();
            let t = (s - ds[j - 1]) / (ds[j] - ds[j - 1]);
            let tab = ps[j - 1] + t * 1e-3;
            let p = rel.psi(s).unwrap();
            assert!((p - tab).abs() < 1e-6, "s = {s}");
            assert!((rel.lambda_prime(p).unwrap() - s).abs() <= 1e-10);
        }
    }

    #[test]
    fn lambda_second_matches_finite_difference() {
        let rel = DispersionRelation::new(-0.2, 1.1, box_kernel()).unwrap();
        for p in [-1.0, 0.0, 0.4, 2.5] {
            let h = 1e-4;
            let fd = (rel.lambda_prime(p + h).unwrap() - rel.lambda_prime(p - h).unwrap()) / (2.0 * h);
            let exact = rel.lambda_second(p).unwrap();
            assert!(((fd - exact) / exact).abs() < 1e-6, "p = {p}");
        }
    }

    #[test]
    fn table_interpolation_is_accurate() {
        let rel = delayed(-0.5, 1.5);
        let tab = LambdaTable::new(rel.clone(), -3.0, 3.0, 1e-3).unwrap();
        for k in 0..997 {
            let p = -2.9 + k as f64 * 0.005_813;
            let (l, d) = tab.eval(p).unwrap();
            assert!((l - rel.lambda(p).unwrap()).abs() < 1e-12);
            assert!((d - rel.lambda_prime(p).unwrap()).abs() < 1e-9);
        }
        // outside the table
        let (l, _) = tab.eval(5.0).unwrap();
        assert_eq!(l, rel.lambda(5.0).unwrap());
    }

    #[test]
    fn cache_does_not_change_results() {
        let rel = delayed(0.2, 0.7);
        let first = rel.lambda(1.234_567).unwrap();
        let cached = rel.lambda(1.234_567).unwrap();
        let fresh = rel.clone().lambda(1.234_567).unwrap();
        assert_eq!(first.to_bits(), cached.to_bits());
        assert_eq!(first.to_bits(), fresh.to_bits());
    }

    fn arb_relation() -> impl Strategy<Value = DispersionRelation> {
        (-0.5f64..1.0, 0.0f64..1.5, 0.1f64..2.0, 0.0f64..1.0, any::<bool>()).prop_filter_map(
            "positive sum",
            |(r1, r2, tau, y, boxed)| {
                if r1 + r2 <= 0.05 {
                    return None;
                }
                let spec = if boxed {
                    KernelSpec::Uniform { tau0: tau, y_min: -y, y_max: y, n_tau: 5, n_y: 5 }
                } else {
                    KernelSpec::PointMass { tau, y: 0.0 }
                };
                let k = Arc::new(DelayKernel::from_spec(&spec).ok()?);
                DispersionRelation::new(r1, r2, k).ok()
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn residual_after_solve(rel in arb_relation(), p in -10.0f64..10.0) {
            let lam = rel.lambda(p).unwrap();
            prop_assert!(rel.delta(lam, p).unwrap().abs() <= 1e-12 * (1.0 + lam.abs()));
        }

        #[test]
        fn even_for_symmetric_kernels(rel in arb_relation(), p in 0.0f64..6.0) {
            prop_assert!(rel.kernel().symmetric_y());
            let a = rel.lambda(p).unwrap();
            let b = rel.lambda(-p).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }

        #[test]
        fn strictly_convex(rel in arb_relation(), a in -5.0f64..5.0, b in -5.0f64..5.0) {
            prop_assume!((a - b).abs() > 1e-3);
            let mid = rel.lambda(0.5 * (a + b)).unwrap();
            let avg = 0.5 * (rel.lambda(a).unwrap() + rel.lambda(b).unwrap());
            prop_assert!(mid < avg);
        }

        #[test]
        fn derivative_matches_finite_difference(rel in arb_relation(), p in -4.0f64..4.0) {
            let h = 1e-5;
            let fd = (rel.lambda(p + h).unwrap() - rel.lambda(p - h).unwrap()) / (2.0 * h);
            let d = rel.lambda_prime(p).unwrap();
            prop_assert!((fd - d).abs() <= 1e-6 * d.abs().max(1.0));
        }

        #[test]
        fn psi_round_trip(rel in arb_relation(), p in -5.0f64..5.0) {
            let back = rel.psi(rel.lambda_prime(p).unwrap()).unwrap();
            prop_assert!((back - p).abs() <= 1e-9);
        }

        #[test]
        fn stationarity_at_mu_star(rel in arb_relation()) {
            let m = rel.mu_star().unwrap();
            let d = rel.lambda_prime(m.mu).unwrap();
            prop_assert!((d - m.c).abs() <= 1e-8 * (1.0 + m.c));
            // λ(p)/p grows without bound
            prop_assert!(rel.lambda(50.0).unwrap() / 50.0 > m.c);
        }
    }
}
