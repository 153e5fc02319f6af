//! Monotone obstacle scheme for the ray equation.
//!
//! With `w(t, x) = t v(ln t, x / t)` the time-dependent obstacle problem
//! `min{w, w_t + H̃(x/t, w_x)} = 0` becomes
//!
//! `min{v, v_τ + v + G(s, v_s)} = 0`, `G(s, p) = −s p + H̃(s, p)`,
//!
//! on a fixed grid in `s`. Marching in `τ` from `v(0, s) = μ s` converges to
//! the stationary profile `ρ`, and `v(τ) − v(τ − ln 2)` is the
//! self-similarity defect `w(T, x) / T − w(T/2, x/2) · 2/T`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dispersion::LambdaTable;
use crate::environment::{check_hypotheses, RayProfile};
use crate::error::{Error, Result};
use crate::kernels::DelayKernel;
use crate::speeds::Decay;

use super::{default_zero_tol, free_boundary, RayHamiltonian, RaySolution};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flux {
    /// Lax-Friedrichs with a per-interface viscosity coefficient.
    #[default]
    LocalLaxFriedrichs,
    /// Lax-Friedrichs with one global viscosity coefficient.
    LaxFriedrichs,
    Godunov,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HjParams {
    pub h: f64,
    pub s_max: f64,
    /// Right-boundary slope used for `μ = ∞`, or to cap a large finite `μ`.
    /// Defaults to `max(10, 5 max μ*)` over the regimes.
    pub mu_cap: Option<f64>,
    /// Fraction of the largest stable step.
    pub cfl: f64,
    /// Explicit step in `τ`; overrides `cfl` and is checked against it.
    pub dtau: Option<f64>,
    pub tol: f64,
    pub max_steps: usize,
    pub flux: Flux,
    pub table_dp: f64,
    /// Defaults to `10 h²`.
    pub zero_tol: Option<f64>,
}

impl Default for HjParams {
    fn default() -> Self {
        HjParams {
            h: 0.005,
            s_max: 6.0,
            mu_cap: None,
            cfl: 0.9,
            dtau: None,
            tol: 1e-9,
            max_steps: 20_000_000,
            flux: Flux::LocalLaxFriedrichs,
            table_dp: 1e-3,
            zero_tol: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverDiagnostics {
    pub flux: Flux,
    pub dtau: f64,
    pub theta: f64,
    /// `dτ θ / h`, at most one half.
    pub cfl_ratio: f64,
    pub steps: usize,
    pub tau: f64,
    pub defect: f64,
    pub zero_tol: f64,
    pub n_regimes: usize,
}

pub(crate) fn default_mu_cap(profile: &RayProfile, kernel: &Arc<DelayKernel>) -> Result<f64> {
    let mut m: f64 = 0.0;
    for (r1, r2) in profile.regimes() {
        let k = if r2 == 0.0 { Arc::new(DelayKernel::absent()) } else { Arc::clone(kernel) };
        let rel = crate::dispersion::DispersionRelation::new(r1, r2, k)?;
        m = m.max(rel.mu_star()?.mu);
    }
    Ok(10f64.max(5.0 * m))
}

/// Per-cell data frozen for the whole march.
struct Cell<'a> {
    s: f64,
    table: &'a LambdaTable,
    /// Minimiser of `G(s, ·)`.
    argmin: f64,
}

impl Cell<'_> {
    #[inline]
    fn g(&self, p: f64) -> Result<(f64, f64)> {
        let (l, dl) = self.table.eval(p)?;
        Ok((l - self.s * p, dl - self.s))
    }
}

/// Solves the ray equation by marching to a steady state. The grid holds
/// cell centres `(i + ½) h`; the returned solution prepends `s = 0`.
pub fn hj_solve(profile: &RayProfile, kernel: Arc<DelayKernel>, mu: Decay, params: &HjParams) -> Result<RaySolution> {
    let report = check_hypotheses(profile, &kernel);
    if let Some(c) = report.clause("positivity").filter(|c| !c.passed) {
        return Err(Error::Precondition(format!("hypothesis '{}' fails: {}", c.name, c.detail)));
    }
    if let Decay::Finite(m) = mu {
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::Precondition(format!("decay rate mu = {m} must be positive")));
        }
    }
    let HjParams { h, s_max, cfl, tol, max_steps, flux, table_dp, .. } = *params;
    if !(h > 0.0) || !(s_max > 2.0 * h) || !(table_dp > 0.0) || !(tol > 0.0) {
        return Err(Error::Precondition(format!("bad grid parameters h = {h}, s_max = {s_max}")));
    }
    let cap = match params.mu_cap {
        Some(c) => c,
        None => default_mu_cap(profile, &kernel)?,
    };
    let slope = match mu {
        Decay::Finite(m) => m.min(cap),
        Decay::Infinite => cap,
    };

    let p_max = slope + 1.0;
    let ham = RayHamiltonian::new(profile, &kernel, p_max, table_dp)?;
    let n = (s_max / h).round() as usize;
    let cells = (0..n)
        .map(|i| {
            let s = (i as f64 + 0.5) * h;
            let table = ham.table(ham.regime_index(s));
            let argmin = table.relation().psi(s)?.clamp(-p_max, p_max);
            Ok(Cell { s, table, argmin })
        })
        .collect::<Result<Vec<_>>>()?;

    // |∂p G| ≤ s_max + λ′(p_max) on the reachable slopes [0, slope]
    let mut lam_slope: f64 = 0.0;
    for k in 0..ham.n_regimes() {
        lam_slope = lam_slope.max(ham.table(k).eval(p_max)?.1);
    }
    let theta = s_max + lam_slope;
    let stable = (0.5 * h / theta).min(1.0 / (1.0 + theta / h));
    let dtau = match params.dtau {
        Some(dt) => {
            let ratio = dt * theta / h;
            if ratio > 0.5 {
                return Err(Error::Cfl { ratio, limit: 0.5 });
            }
            if dt * (1.0 + theta / h) > 1.0 {
                return Err(Error::Cfl { ratio: dt * (1.0 + theta / h), limit: 1.0 });
            }
            dt
        }
        None => {
            if !(cfl > 0.0 && cfl <= 1.0) {
                return Err(Error::Precondition(format!("cfl = {cfl} must lie in (0, 1]")));
            }
            cfl * stable
        }
    };

    let mut v: Vec<f64> = cells.iter().map(|c| slope * c.s).collect();
    let mut next = vec![0.0; n];
    let mut flux_at = vec![0.0; n];
    let per_checkpoint = (std::f64::consts::LN_2 / dtau).ceil() as usize;
    let mut checkpoint = v.clone();
    let mut steps = 0usize;
    let mut defect = f64::INFINITY;

    while steps < max_steps {
        for i in 0..n {
            let left = if i == 0 { 0.0 } else { v[i - 1] };
            let right = if i + 1 == n { v[i] + slope * h } else { v[i + 1] };
            let pm = (v[i] - left) / h;
            let pp = (right - v[i]) / h;
            flux_at[i] = numerical_flux(&cells[i], pm, pp, theta, flux)?;
        }
        for i in 0..n {
            next[i] = (v[i] - dtau * (v[i] + flux_at[i])).max(0.0);
        }
        std::mem::swap(&mut v, &mut next);
        steps += 1;
        if steps % per_checkpoint == 0 {
            defect = v.iter().zip(&checkpoint).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if defect <= tol {
                break;
            }
            checkpoint.copy_from_slice(&v);
        }
    }
    if defect > tol {
        return Err(Error::NonConvergence { defect, tol, steps });
    }

    let mut s = Vec::with_capacity(n + 1);
    let mut rho = Vec::with_capacity(n + 1);
    s.push(0.0);
    rho.push(0.0);
    s.extend(cells.iter().map(|c| c.s));
    rho.extend_from_slice(&v);
    let zero_tol = params.zero_tol.unwrap_or_else(|| default_zero_tol(h));
    let fb = free_boundary(&s[1..], &rho[1..], zero_tol);
    let mu_cap = if mu.is_infinite() || mu.finite().is_some_and(|m| m > cap) { Some(cap) } else { None };
    Ok(RaySolution {
        s,
        rho,
        h,
        s_hat: fb.s_hat,
        flag: fb.flag,
        mu,
        mu_cap,
        diagnostics: Some(SolverDiagnostics {
            flux,
            dtau,
            theta,
            cfl_ratio: dtau * theta / h,
            steps,
            tau: steps as f64 * dtau,
            defect,
            zero_tol,
            n_regimes: ham.n_regimes(),
        }),
    })
}

#[inline]
fn numerical_flux(cell: &Cell<'_>, pm: f64, pp: f64, theta: f64, flux: Flux) -> Result<f64> {
    match flux {
        Flux::LaxFriedrichs => Ok(cell.g(0.5 * (pm + pp))?.0 - 0.5 * theta * (pp - pm)),
        Flux::LocalLaxFriedrichs => {
            let (_, dm) = cell.g(pm)?;
            let (_, dp) = cell.g(pp)?;
            let a = dm.abs().max(dp.abs());
            Ok(cell.g(0.5 * (pm + pp))?.0 - 0.5 * a * (pp - pm))
        }
        Flux::Godunov => {
            if pm <= pp {
                Ok(cell.g(cell.argmin.clamp(pm, pp))?.0)
            } else {
                Ok(cell.g(pm)?.0.max(cell.g(pp)?.0))
            }
        }
    }
}
