use serde::Serialize;

use crate::dispersion::DispersionRelation;
use crate::error::{Error, Result};

use super::{FrontTrace, InitialData, SimResult, Snapshot};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpeedFit {
    pub c: f64,
    pub intercept: f64,
    pub stderr: f64,
    /// Root mean square of the residuals.
    pub residual: f64,
    pub n: usize,
}

/// Ordinary least squares line through `(t, x)`.
fn ols(points: &[(f64, f64)]) -> SpeedFit {
    let n = points.len() as f64;
    let tm = points.iter().map(|p| p.0).sum::<f64>() / n;
    let xm = points.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = points.iter().map(|p| (p.0 - tm).powi(2)).sum();
    let stx: f64 = points.iter().map(|p| (p.0 - tm) * (p.1 - xm)).sum();
    let c = stx / stt;
    let intercept = xm - c * tm;
    let sse: f64 = points.iter().map(|p| (p.1 - intercept - c * p.0).powi(2)).sum();
    let dof = (n - 2.0).max(1.0);
    SpeedFit { c, intercept, stderr: (sse / dof / stt).sqrt(), residual: (sse / n).sqrt(), n: points.len() }
}

/// Least-squares slope of the front over `t ∈ [t_a, t_b]`.
pub fn estimate_speed(trace: &FrontTrace, window: (f64, f64)) -> Result<SpeedFit> {
    let mut points = Vec::new();
    for s in trace.samples.iter().filter(|s| s.t >= window.0 && s.t <= window.1) {
        match s.x {
            Some(x) => points.push((s.t, x)),
            None => return Err(Error::FrontNotDetected { t: s.t }),
        }
    }
    if points.len() < 10 {
        return Err(Error::InsufficientSamples { needed: 10, got: points.len() });
    }
    Ok(ols(&points))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecayFit {
    pub rate: f64,
    pub stderr: f64,
    pub n: usize,
}

/// Spatial decay rate of `u` from a straight-line fit of `−ln u` on the
/// points of `[x_from, x_to]` where `u` lies in `(floor, ceiling)`.
pub fn fit_decay_rate(x: &[f64], u: &[f64], x_from: f64, x_to: f64, floor: f64, ceiling: f64) -> Result<DecayFit> {
    let points: Vec<(f64, f64)> = x
        .iter()
        .zip(u)
        .filter(|(&xi, &ui)| xi >= x_from && xi <= x_to && ui > floor && ui < ceiling)
        .map(|(&xi, &ui)| (xi, -ui.ln()))
        .collect();
    if points.len() < 10 {
        return Err(Error::InsufficientSamples { needed: 10, got: points.len() });
    }
    let f = ols(&points);
    Ok(DecayFit { rate: f.c, stderr: f.stderr, n: f.n })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DichotomyRow {
    pub t: f64,
    /// `sup u` over `x ≥ (ŝ + η) t`.
    pub outer: f64,
    /// `inf u` over `0 ≤ x ≤ (ŝ − η) t`; `None` when that range is empty.
    pub inner: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DichotomyReport {
    pub s_hat: f64,
    pub eta: f64,
    pub rows: Vec<DichotomyRow>,
    /// `η ≥ ŝ`: the inner region is empty.
    pub degenerate: bool,
    pub outer_decays: bool,
    pub inner_positive: bool,
}

impl DichotomyReport {
    pub fn passed(&self) -> bool {
        self.outer_decays && (self.degenerate || self.inner_positive)
    }
}

/// Checks `u → 0` ahead of `(ŝ + η) t` and `u` bounded below behind
/// `(ŝ − η) t`, using snapshots at the times in `t_check`.
pub fn verify_dichotomy(
    result: &SimResult,
    s_hat: f64,
    eta: f64,
    t_check: &[f64],
    inner_floor: f64,
) -> Result<DichotomyReport> {
    if !(s_hat > 0.0) || !(eta > 0.0) {
        return Err(Error::Precondition(format!("need s_hat > 0 and eta > 0, got {s_hat}, {eta}")));
    }
    let x_hi = *result.x.last().expect("nonempty grid");
    let mut rows = Vec::new();
    for &t in t_check {
        if (s_hat + eta) * t > x_hi {
            return Err(Error::Precondition(format!("(s_hat + eta) t = {} beyond the domain", (s_hat + eta) * t)));
        }
        let snap = result
            .snapshot_at(t)
            .ok_or_else(|| Error::Precondition(format!("no snapshot stored at t = {t}")))?;
        let outer_from = (s_hat + eta) * t;
        let outer = result.x.iter().zip(&snap.u).filter(|(&x, _)| x >= outer_from).map(|(_, &u)| u).fold(0.0, f64::max);
        let inner_to = (s_hat - eta) * t;
        let inner = (inner_to > 0.0).then(|| {
            result
                .x
                .iter()
                .zip(&snap.u)
                .filter(|(&x, _)| x >= 0.0 && x <= inner_to)
                .map(|(_, &u)| u)
                .fold(f64::INFINITY, f64::min)
        });
        rows.push(DichotomyRow { t, outer, inner });
    }
    let last = rows.last().copied();
    let degenerate = eta >= s_hat;
    Ok(DichotomyReport {
        s_hat,
        eta,
        degenerate,
        outer_decays: last.is_some_and(|r| r.outer < 1e-3),
        inner_positive: !degenerate && last.and_then(|r| r.inner).is_some_and(|v| v > inner_floor),
        rows,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TailBoundReport {
    /// Smallest `Q` with `(μ − δ) x − Q t ≤ w` on the samples.
    pub q_lower: f64,
    /// Smallest `Q` with `w ≤ (μ + δ) x + Q t` on the samples.
    pub q_upper: f64,
    /// `λ(μ − δ) + max(ln a, 0)`: the lower constant a linear
    /// supersolution provides.
    pub q_lower_limit: f64,
    pub samples: usize,
    pub skipped: usize,
    pub passed: bool,
}

/// Fits the constants of the sandwich
/// `max{(μ − δ) x − Q t, 0} ≤ −ln u ≤ (μ + δ) x + Q t` on `x ≥ 0`, with `t`
/// floored at one so that a frozen profile gives constants of order `|ln a|`.
pub fn tail_bound_from(
    x: &[f64],
    snapshots: &[Snapshot],
    mu: f64,
    delta: f64,
    amplitude: f64,
    lambda_lower: f64,
) -> Result<TailBoundReport> {
    if !(delta > 0.0 && delta < mu) {
        return Err(Error::Precondition(format!("need 0 < delta < mu, got delta = {delta}, mu = {mu}")));
    }
    let (mut q_lower, mut q_upper): (f64, f64) = (0.0, 0.0);
    let (mut samples, mut skipped) = (0usize, 0usize);
    for snap in snapshots {
        let t = snap.t.max(1.0);
        for (&xi, &ui) in x.iter().zip(&snap.u) {
            if xi < 0.0 {
                continue;
            }
            if !(ui > 1e-300) {
                skipped += 1;
                continue;
            }
            let w = -ui.ln();
            q_lower = q_lower.max(((mu - delta) * xi - w) / t);
            q_upper = q_upper.max((w - (mu + delta) * xi) / t);
            samples += 1;
        }
    }
    if samples == 0 || skipped > samples {
        return Err(Error::Precondition(format!("underflowed region too large: {skipped} of {} points", samples + skipped)));
    }
    let q_lower_limit = lambda_lower + amplitude.ln().max(0.0);
    let passed = q_lower.is_finite() && q_upper.is_finite() && q_lower <= q_lower_limit * (1.0 + 1e-2) + 1e-9;
    Ok(TailBoundReport { q_lower, q_upper, q_lower_limit, samples, skipped, passed })
}

/// [`tail_bound_from`] on the snapshots of a run started from `IcMu`.
pub fn tail_bound_check(result: &SimResult, ic: &InitialData, rel: &DispersionRelation, delta: f64) -> Result<TailBoundReport> {
    let InitialData::IcMu { mu, amplitude } = *ic else {
        return Err(Error::Precondition("tail bounds need exponentially decaying initial data".into()));
    };
    if !(delta > 0.0 && delta < mu) {
        return Err(Error::Precondition(format!("need 0 < delta < mu, got delta = {delta}, mu = {mu}")));
    }
    let lambda_lower = rel.lambda(mu - delta)?;
    tail_bound_from(&result.x, &result.snapshots, mu, delta, amplitude, lambda_lower)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::FrontSample;

    fn trace(f: impl Fn(f64) -> f64, t0: f64, t1: f64, dt: f64) -> FrontTrace {
        let n = ((t1 - t0) / dt).round() as usize;
        FrontTrace {
            theta: 0.1,
            samples: (0..=n).map(|k| t0 + k as f64 * dt).map(|t| FrontSample { t, x: Some(f(t)) }).collect(),
        }
    }

    #[test]
    fn exact_line() {
        let fit = estimate_speed(&trace(|t| 2.5 * t, 0.0, 50.0, 0.5), (10.0, 50.0)).unwrap();
        assert!((fit.c - 2.5).abs() < 1e-12);
        assert!(fit.stderr < 1e-10);
    }

    #[test]
    fn logarithmic_delay() {
        let fit = estimate_speed(&trace(|t| 2.0 * t - 1.5 * t.ln(), 1.0, 200.0, 0.5), (100.0, 200.0)).unwrap();
        assert!((1.97..=2.0).contains(&fit.c), "{}", fit.c);
    }

    #[test]
    fn missing_front_and_short_windows() {
        let mut tr = trace(|t| t, 0.0, 20.0, 1.0);
        assert!(matches!(estimate_speed(&tr, (0.0, 5.0)), Err(Error::InsufficientSamples { .. })));
        tr.samples[12].x = None;
        assert!(matches!(estimate_speed(&tr, (0.0, 20.0)), Err(Error::FrontNotDetected { .. })));
    }

    #[test]
    fn decay_rate_of_exponential() {
        let x: Vec<f64> = (0..200).map(|i| i as f64 * 0.5).collect();
        let u: Vec<f64> = x.iter().map(|&xi| 0.3 * (-0.7 * xi).exp()).collect();
        let f = fit_decay_rate(&x, &u, 10.0, 90.0, 1e-300, 1.0).unwrap();
        assert!((f.rate - 0.7).abs() < 1e-12);
    }

    #[test]
    fn frozen_profile_tail_constants() {
        let (mu, a, delta) = (0.5, 0.2f64, 0.05);
        let x: Vec<f64> = (0..400).map(|i| i as f64 * 0.25 - 20.0).collect();
        let u: Vec<f64> = x.iter().map(|&xi| a * (-mu * xi).exp().min(1.0)).collect();
        let snaps = [Snapshot { t: 0.01, u }];
        let rep = tail_bound_from(&x, &snaps, mu, delta, a, 0.5).unwrap();
        assert!(rep.q_upper <= a.ln().abs() + 1e-12);
        assert!(rep.q_lower <= 1e-12);
        assert!(rep.passed);
    }
}
