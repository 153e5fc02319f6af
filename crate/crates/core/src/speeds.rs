//! Explicit spreading speeds for homogeneous, single-shift and two-shift
//! environments.

use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dispersion::DispersionRelation;
use crate::error::{Error, Result};
use crate::roots::bisect;

/// Relative tolerance for deciding `μ ≤ μ*₊` near the boundary.
const MU_DISPATCH_TOL: f64 = 1e-12;

/// Exponential decay rate of the initial data; `Infinite` means faster than
/// any exponential (e.g. compact support).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Decay {
    Finite(f64),
    Infinite,
}

impl Decay {
    pub fn finite(self) -> Option<f64> {
        match self {
            Decay::Finite(m) => Some(m),
            Decay::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Decay::Infinite)
    }

    fn validate(self) -> Result<()> {
        match self {
            Decay::Finite(m) if !(m > 0.0) || !m.is_finite() => {
                Err(Error::Precondition(format!("decay rate mu = {m} must be positive")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Decay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decay::Finite(m) => write!(f, "{m}"),
            Decay::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Decay {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            Decay::Finite(m) => s.serialize_f64(m),
            Decay::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Decay {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Decay;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a positive number or \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Decay, E> {
                if v.is_infinite() && v > 0.0 {
                    Ok(Decay::Infinite)
                } else {
                    Ok(Decay::Finite(v))
                }
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Decay, E> {
                Ok(Decay::Finite(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Decay, E> {
                Ok(Decay::Finite(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Decay, E> {
                match v {
                    "inf" | "infinity" | "Inf" => Ok(Decay::Infinite),
                    other => other.parse::<f64>().map(Decay::Finite).map_err(E::custom),
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// A spreading speed together with the branch of the case table that produced it.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SpeedResult {
    pub s_hat: f64,
    pub regime: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_star_minus: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_star_plus: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_star_minus: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_star_plus: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub underline_p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bar_p: Option<f64>,
}

impl SpeedResult {
    fn new(s_hat: f64, regime: &'static str) -> Self {
        SpeedResult { s_hat, regime, ..Default::default() }
    }
}

pub fn speed_homogeneous(rel: &DispersionRelation, mu: Decay) -> Result<SpeedResult> {
    mu.validate()?;
    let ms = rel.mu_star()?;
    let mut out = match mu {
        Decay::Finite(m) if m < ms.mu => SpeedResult::new(rel.lambda(m)? / m, "homogeneous-decay"),
        _ => SpeedResult::new(ms.c, "homogeneous-minimal"),
    };
    out.mu_star_plus = Some(ms.mu);
    out.c_star_plus = Some(ms.c);
    Ok(out)
}

/// Smallest root of `c1 p − λ₋(p) = c1 μ − λ₊(μ)`.
pub fn underline_p(minus: &DispersionRelation, plus: &DispersionRelation, c1: f64, mu: f64) -> Result<f64> {
    let rhs = c1 * mu - plus.lambda(mu)?;
    if !(rhs > 0.0) {
        return Err(Error::Precondition(format!("underline p needs c1 > lambda+(mu)/mu (c1 = {c1}, mu = {mu})")));
    }
    let top = mu.min(minus.psi(c1)?);
    bisect(|p| Ok(c1 * p - minus.lambda(p)? - rhs), 0.0, top, "underline p")
}

/// Smallest root of `c1 p − λ₋(p) = c1 Ψ₊(c1) − λ₊(Ψ₊(c1))`.
pub fn bar_p(minus: &DispersionRelation, plus: &DispersionRelation, c1: f64) -> Result<f64> {
    let q = plus.psi(c1)?;
    let rhs = c1 * q - plus.lambda(q)?;
    if !(rhs > 0.0) {
        return Err(Error::Precondition(format!("bar p needs c1 > c*+ (c1 = {c1})")));
    }
    let top = q.min(minus.psi(c1)?);
    bisect(|p| Ok(c1 * p - minus.lambda(p)? - rhs), 0.0, top, "bar p")
}

/// The shift speed `c̄1 > c*₊` at which `bar_p(c̄1) = μ*₋`.
pub fn bar_c1(minus: &DispersionRelation, plus: &DispersionRelation) -> Result<f64> {
    let target = minus.mu_star()?.mu;
    let lo = plus.mu_star()?.c;
    let mut hi = 2.0 * lo.max(1.0);
    let mut doublings = 0;
    while bar_p(minus, plus, hi)? < target {
        doublings += 1;
        if doublings > 200 {
            return Err(Error::BracketExpansion { what: "bar c1", doublings });
        }
        hi *= 2.0;
    }
    // bar_p is increasing in c1; at c1 = c*+ it lies below μ*−
    let lo = lo * (1.0 + 1e-12) + f64::MIN_POSITIVE;
    bisect(|c| Ok(bar_p(minus, plus, c)? - target), lo, hi, "bar c1")
}

fn check_ordering(minus: &DispersionRelation, plus: &DispersionRelation) -> Result<()> {
    let (sm, sp) = (minus.r1() + minus.r2(), plus.r1() + plus.r2());
    if !(minus.r1() <= plus.r1() && minus.r2() <= plus.r2() && sp > sm && sm > 0.0) {
        return Err(Error::Precondition(format!(
            "single shift needs R1- <= R1+, R2- <= R2+ and R1+ + R2+ > R1- + R2- > 0 (got {sm} and {sp})"
        )));
    }
    if minus.kernel() != plus.kernel() && **minus.kernel() != **plus.kernel() {
        return Err(Error::Precondition("both sides must share one kernel".into()));
    }
    Ok(())
}

/// Single shift at speed `c1` between the `minus` (behind) and `plus` (ahead) regimes.
pub fn speed_single_shift(
    minus: &DispersionRelation,
    plus: &DispersionRelation,
    c1: f64,
    mu: Decay,
) -> Result<SpeedResult> {
    mu.validate()?;
    check_ordering(minus, plus)?;
    let msm = minus.mu_star()?;
    let msp = plus.mu_star()?;
    let mut out = SpeedResult::default();

    let lower_branch = |p: f64, out: &mut SpeedResult, label: &'static str| -> Result<()> {
        if p < msm.mu {
            out.s_hat = minus.lambda(p)? / p;
            out.regime = label;
        } else {
            out.s_hat = msm.c;
            out.regime = "single-shift-minimal-minus";
        }
        Ok(())
    };

    match mu {
        Decay::Finite(m) if m <= msp.mu * (1.0 + MU_DISPATCH_TOL) => {
            let thr = plus.lambda(m)? / m;
            if c1 <= thr {
                out.s_hat = thr;
                out.regime = "single-shift-decay-plus";
            } else {
                let up = underline_p(minus, plus, c1, m)?;
                out.underline_p = Some(up);
                lower_branch(up, &mut out, "single-shift-underline")?;
            }
        }
        _ => {
            if c1 <= msp.c {
                out.s_hat = msp.c;
                out.regime = "single-shift-minimal-plus";
            } else {
                let within = match mu {
                    Decay::Finite(m) => c1 <= plus.lambda_prime(m)?,
                    Decay::Infinite => true,
                };
                if within {
                    let bp = bar_p(minus, plus, c1)?;
                    out.bar_p = Some(bp);
                    lower_branch(bp, &mut out, "single-shift-bar")?;
                } else {
                    let m = mu.finite().expect("finite by construction");
                    let up = underline_p(minus, plus, c1, m)?;
                    out.underline_p = Some(up);
                    lower_branch(up, &mut out, "single-shift-underline")?;
                }
            }
        }
    }
    out.mu_star_minus = Some(msm.mu);
    out.mu_star_plus = Some(msp.mu);
    out.c_star_minus = Some(msm.c);
    out.c_star_plus = Some(msp.c);
    Ok(out)
}

/// `x + r / x`, the KPP speed of a front decaying at rate `x` into a region of growth `r`.
fn pulled(x: f64, r: f64) -> f64 {
    x + r / x
}

/// Single-shift Fisher-KPP speeds with `r(−∞) = r1 < r2 = r(+∞)`.
pub fn kpp_single_shift(r1: f64, r2: f64, c1: f64, mu: Decay) -> Result<SpeedResult> {
    mu.validate()?;
    if !(r2 > r1 && r1 > 0.0) {
        return Err(Error::Precondition(format!("need r2 > r1 > 0 (r1 = {r1}, r2 = {r2})")));
    }
    let (s1, s2, gap) = (r1.sqrt(), r2.sqrt(), (r2 - r1).sqrt());
    // decay-limited root written through A = 2 underline_p
    let decay_branch = |m: f64| {
        let a = c1 - ((c1 - 2.0 * m).powi(2) + 4.0 * (r2 - r1)).sqrt();
        a / 2.0 + 2.0 * r1 / a
    };
    let bar = || pulled(c1 / 2.0 - gap, r1);
    let (s_hat, regime) = match mu {
        Decay::Finite(m) if m <= s1 => {
            if c1 <= m + r2 / m {
                (m + r2 / m, "single-shift-decay-plus")
            } else {
                (decay_branch(m), "single-shift-underline")
            }
        }
        Decay::Finite(m) if m < s2 => {
            let k = (m * m + r2 - 2.0 * r1) / (m - s1);
            if c1 <= m + r2 / m {
                (m + r2 / m, "single-shift-decay-plus")
            } else if c1 < k {
                (decay_branch(m), "single-shift-underline")
            } else {
                (2.0 * s1, "single-shift-minimal-minus")
            }
        }
        Decay::Finite(m) if m < s1 + gap => {
            let k = (m * m + r2 - 2.0 * r1) / (m - s1);
            if c1 <= 2.0 * s2 {
                (2.0 * s2, "single-shift-minimal-plus")
            } else if c1 <= 2.0 * m {
                (bar(), "single-shift-bar")
            } else if c1 < k {
                (decay_branch(m), "single-shift-underline")
            } else {
                (2.0 * s1, "single-shift-minimal-minus")
            }
        }
        _ => {
            if c1 <= 2.0 * s2 {
                (2.0 * s2, "single-shift-minimal-plus")
            } else if c1 < 2.0 * s1 + 2.0 * gap {
                (bar(), "single-shift-bar")
            } else {
                (2.0 * s1, "single-shift-minimal-minus")
            }
        }
    };
    Ok(SpeedResult {
        s_hat,
        regime,
        mu_star_minus: Some(s1),
        mu_star_plus: Some(s2),
        c_star_minus: Some(2.0 * s1),
        c_star_plus: Some(2.0 * s2),
        ..Default::default()
    })
}

/// Speed of a Fisher-KPP front behind a habitat edge moving at `c1`, for
/// compactly supported initial data.
pub fn speed_nonlocal_pulling(r1: f64, r2: f64, c1: f64) -> Result<f64> {
    if !(r2 > r1 && r1 > 0.0) {
        return Err(Error::Precondition(format!("need r2 > r1 > 0 (r1 = {r1}, r2 = {r2})")));
    }
    let gap = (r2 - r1).sqrt();
    Ok(if c1 <= 2.0 * r2.sqrt() {
        2.0 * r2.sqrt()
    } else if c1 < 2.0 * (gap + r1.sqrt()) {
        let x = c1 / 2.0 - gap;
        x + r1 / x
    } else {
        2.0 * r1.sqrt()
    })
}

/// Fisher-KPP speed with growth `1` ahead of `c1 t`, `r2` between `c2 t` and
/// `c1 t`, and `r1` behind `c2 t`, for compactly supported initial data.
pub fn kpp_two_shift(r1: f64, r2: f64, c1: f64, c2: f64) -> Result<SpeedResult> {
    if !(1.0 > r2 && r2 > r1 && r1 > 0.0) {
        return Err(Error::Precondition(format!("need 1 > r2 > r1 > 0 (r1 = {r1}, r2 = {r2})")));
    }
    if !(c1 > c2 && c2 > 0.0) {
        return Err(Error::Precondition(format!("need c1 > c2 > 0 (c1 = {c1}, c2 = {c2})")));
    }
    let mut out = SpeedResult::default();
    if c1 <= 2.0 {
        out.s_hat = 2.0;
        out.regime = "two-shift-far-field";
        return Ok(out);
    }
    let (s1, s2) = (r1.sqrt(), r2.sqrt());
    // decay rate that the far field imposes on the middle region
    let mu = c1 / 2.0 - (1.0 - r2).sqrt();
    let bar = c2 / 2.0 - ((c2 / 2.0 - mu).powi(2) + r2 - r1).sqrt();
    let under = c2 / 2.0 - (r2 - r1).sqrt();
    out.mu_star_minus = Some(s1);
    out.mu_star_plus = Some(s2);
    let fallback = |out: &mut SpeedResult, p: f64, label| {
        if p < s1 {
            out.s_hat = pulled(p, r1);
            out.regime = label;
        } else {
            out.s_hat = 2.0 * s1;
            out.regime = "two-shift-minimal-inner";
        }
    };
    if mu < s2 {
        if c2 <= pulled(mu, r2) {
            out.s_hat = pulled(mu, r2);
            out.regime = "two-shift-decay-middle";
        } else {
            out.bar_p = Some(bar);
            fallback(&mut out, bar, "two-shift-bar");
        }
    } else if c2 <= 2.0 * s2 {
        out.s_hat = 2.0 * s2;
        out.regime = "two-shift-minimal-middle";
    } else if c2 >= 2.0 * mu {
        out.bar_p = Some(bar);
        fallback(&mut out, bar, "two-shift-bar");
    } else {
        out.underline_p = Some(under);
        fallback(&mut out, under, "two-shift-underline");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::DelayKernel;
    use proptest::prelude::*;
    use std::sync::Arc;

    const SHAT_2_5: f64 = 1.035_059_335_841_542_5;

    fn kpp_pair(r1: f64, r2: f64) -> (DispersionRelation, DispersionRelation) {
        (DispersionRelation::kpp(r1), DispersionRelation::kpp(r2))
    }

    #[test]
    fn homogeneous_examples() {
        let rel = DispersionRelation::kpp(1.0);
        assert!((speed_homogeneous(&rel, Decay::Finite(0.5)).unwrap().s_hat - 2.5).abs() < 1e-15);
        assert_eq!(speed_homogeneous(&rel, Decay::Infinite).unwrap().s_hat, 2.0);
        assert_eq!(speed_homogeneous(&rel, Decay::Finite(1.0)).unwrap().s_hat, 2.0);
        assert!(speed_homogeneous(&rel, Decay::Finite(0.0)).is_err());
        assert!(speed_homogeneous(&rel, Decay::Finite(-1.0)).is_err());
    }

    #[test]
    fn underline_p_examples() {
        let (m, p) = kpp_pair(0.25, 1.0);
        let up = underline_p(&m, &p, 3.0, 0.4).unwrap();
        assert!((up - 0.1).abs() < 1e-14);
        for &(c1, mu) in &[(3.5, 0.5), (4.0, 1.2), (2.95, 0.45)] {
            let closed = (c1 - ((c1 - 2.0 * mu) * (c1 - 2.0 * mu) + 4.0 * 0.75f64).sqrt()) / 2.0;
            assert!((underline_p(&m, &p, c1, mu).unwrap() - closed).abs() < 1e-13);
        }
    }

    #[test]
    fn bar_p_examples() {
        let (m, p) = kpp_pair(0.25, 1.0);
        let bp = bar_p(&m, &p, 2.5).unwrap();
        assert!((bp - 0.383_974_596_215_561_4).abs() < 1e-14);
        let cbar = bar_c1(&m, &p).unwrap();
        assert!((cbar - 2.732_050_807_568_877).abs() < 1e-12);
    }

    fn delayed_pair() -> (DispersionRelation, DispersionRelation) {
        let k = Arc::new(DelayKernel::point_mass(1.0, 0.0).unwrap());
        (
            DispersionRelation::new(0.1, 0.3, k.clone()).unwrap(),
            DispersionRelation::new(0.4, 0.9, k).unwrap(),
        )
    }

    /// Smallest sign change of `f` on a uniform grid, linearly interpolated.
    fn grid_root(f: impl Fn(f64) -> f64, top: f64, step: f64) -> f64 {
        let mut prev = (0.0, f(0.0));
        let mut p = step;
        while p <= top + step {
            let v = f(p);
            if v >= 0.0 {
                return prev.0 + (p - prev.0) * (-prev.1) / (v - prev.1);
            }
            prev = (p, v);
            p += step;
        }
        panic!("no sign change");
    }

    #[test]
    fn underline_and_bar_against_grid_scan() {
        let (m, p) = delayed_pair();
        let (c1, mu) = (3.0, 0.7);
        let rhs = c1 * mu - p.lambda(mu).unwrap();
        let scan = grid_root(|x| c1 * x - m.lambda(x).unwrap() - rhs, mu, 1e-5);
        assert!((underline_p(&m, &p, c1, mu).unwrap() - scan).abs() < 1e-8);

        let q = p.psi(c1).unwrap();
        let rhs = c1 * q - p.lambda(q).unwrap();
        let scan = grid_root(|x| c1 * x - m.lambda(x).unwrap() - rhs, q, 1e-5);
        assert!((bar_p(&m, &p, c1).unwrap() - scan).abs() < 1e-8);
    }

    #[test]
    fn single_shift_examples() {
        let (m, p) = kpp_pair(0.25, 1.0);
        let s = |c1, mu| speed_single_shift(&m, &p, c1, mu).unwrap();
        assert_eq!(s(1.5, Decay::Infinite).s_hat, 2.0);
        let r = s(2.5, Decay::Infinite);
        assert!((r.s_hat - SHAT_2_5).abs() < 1e-12);
        assert!((r.s_hat - 1.035_059_0).abs() < 5e-7);
        assert_eq!(r.regime, "single-shift-bar");
        assert_eq!(s(4.0, Decay::Infinite).s_hat, 1.0);
        let r = s(3.0, Decay::Finite(0.4));
        assert!((r.s_hat - 2.6).abs() < 1e-12);
        assert!((r.underline_p.unwrap() - 0.1).abs() < 1e-14);
        assert!((s(2.0, Decay::Finite(0.4)).s_hat - 2.9).abs() < 1e-15);
    }

    #[test]
    fn single_shift_rejects_bad_ordering() {
        let (m, p) = kpp_pair(0.25, 1.0);
        assert!(speed_single_shift(&p, &m, 2.0, Decay::Infinite).is_err());
        let z = DispersionRelation::kpp(0.0);
        assert!(speed_single_shift(&z, &p, 2.0, Decay::Infinite).is_err());
    }

    #[test]
    fn kpp_closed_form_examples() {
        let s = |c1, mu| kpp_single_shift(0.25, 1.0, c1, mu).unwrap().s_hat;
        assert_eq!(s(1.5, Decay::Infinite), 2.0);
        assert!((s(2.5, Decay::Infinite) - SHAT_2_5).abs() < 1e-14);
        assert_eq!(s(4.0, Decay::Infinite), 1.0);
        assert!((s(3.0, Decay::Finite(0.4)) - 2.6).abs() < 1e-14);
        assert!((s(2.0, Decay::Finite(0.4)) - 2.9).abs() < 1e-15);
    }

    #[test]
    fn nonlocal_pulling_examples() {
        assert_eq!(speed_nonlocal_pulling(0.25, 1.0, 1.9).unwrap(), 2.0);
        assert!((speed_nonlocal_pulling(0.25, 1.0, 2.5).unwrap() - SHAT_2_5).abs() < 1e-14);
        assert_eq!(speed_nonlocal_pulling(0.25, 1.0, 2.0 * (0.75f64.sqrt() + 0.5)).unwrap(), 1.0);
        assert!(speed_nonlocal_pulling(1.0, 0.25, 2.0).is_err());
    }

    #[test]
    fn two_shift_examples() {
        assert_eq!(kpp_two_shift(0.25, 0.5, 1.8, 1.0).unwrap().s_hat, 2.0);
        let r = kpp_two_shift(0.25, 0.5, 2.2, 1.5).unwrap();
        assert!((r.s_hat - 1.665_503_628_099_753_5).abs() < 1e-12);
        assert_eq!(r.regime, "two-shift-decay-middle");
        // far-field rate above sqrt(r2), inner root above sqrt(r1)
        let r = kpp_two_shift(0.25, 0.5, 6.0, 5.0).unwrap();
        assert_eq!(r.s_hat, 1.0);
        assert_eq!(r.regime, "two-shift-minimal-inner");
        assert!(kpp_two_shift(0.25, 0.5, 1.5, 2.2).is_err());
    }

    #[test]
    fn decay_serde() {
        let v: Vec<Decay> = serde_json::from_str(r#"[0.5, "inf", 2]"#).unwrap();
        assert_eq!(v, vec![Decay::Finite(0.5), Decay::Infinite, Decay::Finite(2.0)]);
        assert_eq!(serde_json::to_string(&v).unwrap(), r#"[0.5,"inf",2.0]"#);
    }

    /// Largest jump of `f` across each `x` in `points`.
    fn max_jump(f: impl Fn(f64) -> f64, points: &[f64]) -> f64 {
        points
            .iter()
            .map(|&x| {
                let e = 1e-10 * x.abs().max(1.0);
                (f(x - e) - f(x + e)).abs().max((f(x) - f(x + e)).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn kpp_single_shift_continuous_at_branch_points() {
        let (r1, r2) = (0.25f64, 1.0f64);
        let (s1, s2, gap) = (r1.sqrt(), r2.sqrt(), (r2 - r1).sqrt());
        for mu in [0.2, 0.5, 0.7, 0.9, 1.0, 1.2, 1.36, 1.5, 3.0] {
            let mut pts = vec![mu + r2 / mu, 2.0 * s2, 2.0 * mu, 2.0 * s1 + 2.0 * gap];
            if mu > s1 {
                pts.push((mu * mu + r2 - 2.0 * r1) / (mu - s1));
            }
            let f = |c1| kpp_single_shift(r1, r2, c1, Decay::Finite(mu)).unwrap().s_hat;
            assert!(max_jump(f, &pts) < 1e-8, "mu = {mu}");
        }
        let f = |c1| kpp_single_shift(r1, r2, c1, Decay::Infinite).unwrap().s_hat;
        assert!(max_jump(f, &[2.0, 2.0 * s1 + 2.0 * gap]) < 1e-8);
    }

    #[test]
    fn general_single_shift_continuous_at_branch_points() {
        let (m, p) = delayed_pair();
        let msp = p.mu_star().unwrap();
        let cbar = bar_c1(&m, &p).unwrap();
        let f = |c1| speed_single_shift(&m, &p, c1, Decay::Infinite).unwrap().s_hat;
        assert!(max_jump(f, &[msp.c, cbar]) < 1e-8);
        for mu in [0.5 * msp.mu, 1.5 * msp.mu] {
            let pts = [p.lambda(mu).unwrap() / mu, p.lambda_prime(mu).unwrap(), msp.c];
            let f = |c1| speed_single_shift(&m, &p, c1, Decay::Finite(mu)).unwrap().s_hat;
            assert!(max_jump(f, &pts) < 1e-8, "mu = {mu}");
        }
    }

    #[test]
    fn two_shift_continuous_at_branch_points() {
        let (r1, r2) = (0.25f64, 0.5f64);
        for c1 in [2.2, 2.8, 3.2, 4.0, 6.0] {
            let mu = c1 / 2.0 - (1.0 - r2).sqrt();
            let mut pts = vec![2.0 * r2.sqrt(), 2.0 * mu, mu + r2 / mu];
            // c2 where the inner roots reach sqrt(r1)
            pts.push(2.0 * (r1.sqrt() + (r2 - r1).sqrt()));
            pts.retain(|&c2| c2 > 0.0 && c2 < c1 - 1e-6);
            let f = |c2| kpp_two_shift(r1, r2, c1, c2).unwrap().s_hat;
            assert!(max_jump(f, &pts) < 1e-8, "c1 = {c1}");
        }
        let f = |c1| kpp_two_shift(r1, r2, c1, 1.2).unwrap().s_hat;
        assert!(max_jump(f, &[2.0]) < 1e-8);
    }

    #[test]
    fn general_matches_closed_form_on_lattice() {
        let (m, p) = kpp_pair(0.25, 1.0);
        for i in 1..=50 {
            let mu = 0.06 * i as f64;
            for j in 1..=50 {
                let c1 = 0.1 * j as f64;
                let g = speed_single_shift(&m, &p, c1, Decay::Finite(mu)).unwrap().s_hat;
                let k = kpp_single_shift(0.25, 1.0, c1, Decay::Finite(mu)).unwrap().s_hat;
                assert!((g - k).abs() < 1e-9, "mu = {mu}, c1 = {c1}: {g} vs {k}");
            }
        }
    }

    #[test]
    fn nonincreasing_in_mu_homogeneous() {
        let k = Arc::new(DelayKernel::point_mass(1.0, 0.0).unwrap());
        let rel = DispersionRelation::new(-0.5, 1.5, k).unwrap();
        let ms = rel.mu_star().unwrap();
        let mut prev = f64::INFINITY;
        for i in 1..=60 {
            let mu = 0.05 * i as f64;
            let s = speed_homogeneous(&rel, Decay::Finite(mu)).unwrap().s_hat;
            assert!(s <= prev + 1e-12);
            if mu >= ms.mu {
                assert_eq!(s, ms.c);
            }
            prev = s;
        }
    }

    proptest! {
        #[test]
        fn nonlocal_pulling_equals_case_iv(c1 in 0.0f64..5.0, r1 in 0.05f64..0.9, dr in 0.05f64..1.0) {
            let r2 = r1 + dr;
            let a = speed_nonlocal_pulling(r1, r2, c1).unwrap();
            let b = kpp_single_shift(r1, r2, c1, Decay::Infinite).unwrap().s_hat;
            prop_assert!((a - b).abs() <= 1e-12);
        }

        #[test]
        fn single_shift_bounded_by_homogeneous(mu in 0.05f64..3.0, c1 in 0.01f64..5.0) {
            let (m, p) = kpp_pair(0.25, 1.0);
            let s = speed_single_shift(&m, &p, c1, Decay::Finite(mu)).unwrap().s_hat;
            let lo = speed_homogeneous(&m, Decay::Finite(mu)).unwrap().s_hat;
            let hi = speed_homogeneous(&p, Decay::Finite(mu)).unwrap().s_hat;
            prop_assert!(lo - 1e-12 <= s && s <= hi + 1e-12);
        }

        #[test]
        fn nonincreasing_in_c1_past_threshold(mu in 0.05f64..3.0, c1 in 0.01f64..5.0, dc in 0.0f64..1.0) {
            let (m, p) = kpp_pair(0.25, 1.0);
            let thr = p.lambda(mu).unwrap() / mu;
            prop_assume!(c1 >= thr);
            let a = speed_single_shift(&m, &p, c1, Decay::Finite(mu)).unwrap().s_hat;
            let b = speed_single_shift(&m, &p, c1 + dc, Decay::Finite(mu)).unwrap().s_hat;
            prop_assert!(b <= a + 1e-12);
        }
    }
}
