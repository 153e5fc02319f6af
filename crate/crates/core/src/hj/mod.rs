//! The reduced Hamilton-Jacobi obstacle problem on rays `s = x / t`:
//!
//! `min{ρ, ρ − s ρ′ + H̃(s, ρ′)} = 0` on `(0, ∞)`, `ρ(0) = 0`, `ρ(s) ~ μ s`,
//!
//! whose free boundary `sup{ρ = 0}` is the spreading speed.

mod closed_form;
mod hamiltonian;
mod solver;

use serde::Serialize;

pub use closed_form::{ClosedForm, PiecewiseRho};
pub use hamiltonian::RayHamiltonian;
pub use solver::{hj_solve, Flux, HjParams, SolverDiagnostics};

use crate::error::Result;
use crate::speeds::Decay;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FreeBoundaryFlag {
    Interior,
    /// `ρ` is positive at the first grid point.
    AllPositive,
    /// `ρ` vanishes on the whole grid; the grid is too short.
    AllZero,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FreeBoundary {
    pub s_hat: f64,
    pub flag: FreeBoundaryFlag,
}

/// A gridded profile `ρ(s)` with its free boundary.
#[derive(Clone, Debug, Serialize)]
pub struct RaySolution {
    pub s: Vec<f64>,
    pub rho: Vec<f64>,
    pub h: f64,
    pub s_hat: f64,
    pub flag: FreeBoundaryFlag,
    #[serde(skip)]
    pub mu: Decay,
    /// Slope imposed at the right end of the grid.
    pub mu_cap: Option<f64>,
    pub diagnostics: Option<SolverDiagnostics>,
}

impl RaySolution {
    pub fn s_max(&self) -> f64 {
        *self.s.last().expect("nonempty grid")
    }

    /// Largest decrease between neighbouring grid values.
    pub fn max_decrease(&self) -> f64 {
        self.rho.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max)
    }

    /// Largest excess of an interior local maximum of `ρ(s)/s` over the
    /// larger of its end values.
    pub fn ratio_interior_max_excess(&self) -> f64 {
        let ratio: Vec<f64> = self
            .s
            .iter()
            .zip(&self.rho)
            .filter(|(s, _)| **s > 0.0)
            .map(|(s, r)| r / s)
            .collect();
        if ratio.len() < 3 {
            return 0.0;
        }
        let ends = ratio[0].max(*ratio.last().expect("nonempty"));
        let mut excess: f64 = 0.0;
        for w in ratio.windows(3) {
            if w[1] > w[0] && w[1] >= w[2] {
                excess = excess.max(w[1] - ends);
            }
        }
        excess
    }

    /// Monotonicity and the no-interior-maximum property of `ρ(s)/s`, with
    /// tolerances of one cell.
    pub fn satisfies_profile_invariants(&self) -> bool {
        self.max_decrease() <= self.h * self.h && self.ratio_interior_max_excess() <= 10.0 * self.h
    }
}

/// Default threshold separating `ρ = 0` from `ρ > 0` on a grid of spacing `h`.
pub fn default_zero_tol(h: f64) -> f64 {
    10.0 * h * h
}

/// `sup{s : ρ(s) ≤ zero_tol}` from the first upward crossing, linearly interpolated.
pub fn free_boundary(s: &[f64], rho: &[f64], zero_tol: f64) -> FreeBoundary {
    match rho.iter().position(|&r| r > zero_tol) {
        None => FreeBoundary { s_hat: *s.last().expect("nonempty grid"), flag: FreeBoundaryFlag::AllZero },
        Some(0) => FreeBoundary { s_hat: 0.0, flag: FreeBoundaryFlag::AllPositive },
        Some(i) => {
            let (s0, s1, r0, r1) = (s[i - 1], s[i], rho[i - 1], rho[i]);
            let t = ((zero_tol - r0) / (r1 - r0)).clamp(0.0, 1.0);
            FreeBoundary { s_hat: s0 + t * (s1 - s0), flag: FreeBoundaryFlag::Interior }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct ResidualStats {
    pub max: f64,
    pub l1: f64,
    pub checked: usize,
    pub excluded: usize,
}

/// Complementarity defect `|min{ρ, ρ − s ρ′ + H̃(s, ρ′)}|` with centred
/// differences, skipping three cells around detected kinks.
pub fn viscosity_residual(sol: &RaySolution, ham: &RayHamiltonian) -> Result<ResidualStats> {
    let n = sol.rho.len();
    let h = sol.h;
    let mut kink = vec![false; n];
    for i in 1..n.saturating_sub(1) {
        let d2 = sol.rho[i + 1] - 2.0 * sol.rho[i] + sol.rho[i - 1];
        if d2.abs() > 10.0 * h * h {
            let lo = i.saturating_sub(3);
            let hi = (i + 3).min(n - 1);
            kink[lo..=hi].iter_mut().for_each(|k| *k = true);
        }
    }
    let mut stats = ResidualStats::default();
    for i in 1..n.saturating_sub(1) {
        if kink[i] {
            stats.excluded += 1;
            continue;
        }
        let (s, r) = (sol.s[i], sol.rho[i]);
        let p = (sol.rho[i + 1] - sol.rho[i - 1]) / (2.0 * h);
        let (lam, _) = ham.eval(s, p)?;
        let d = r.min(r - s * p + lam).abs();
        stats.max = stats.max.max(d);
        stats.l1 += d * h;
        stats.checked += 1;
    }
    Ok(stats)
}
