//! Method-of-lines integration of the delayed reaction-diffusion model
//!
//! `u_t = u_xx + f1(t, x, u) + ∑ w f2(t − τ, x − y, u(t − τ, x − y))`
//!
//! with front tracking and the estimators built on it.

mod analysis;

use serde::{Deserialize, Serialize};

use crate::environment::ShiftedEnvironment;
use crate::error::{Error, Result};
use crate::kernels::{DelayKernel, KernelSpec};
use crate::roots::bisect;

pub use analysis::{
    estimate_speed, fit_decay_rate, tail_bound_check, tail_bound_from, verify_dichotomy, DecayFit, DichotomyReport,
    DichotomyRow, SpeedFit, TailBoundReport,
};

/// Instantaneous part of the reaction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum F1 {
    /// `u (r(t, x) − u)`.
    Fisher { env: ShiftedEnvironment },
    /// `−d u`.
    LinearDeath { d: f64 },
}

/// Delayed part of the reaction, evaluated on the history.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum F2 {
    #[default]
    None,
    /// `r(t, x) v e^{−v}`.
    Ricker { env: ShiftedEnvironment },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub f1: F1,
    #[serde(default)]
    pub f2: F2,
    #[serde(default = "no_kernel")]
    pub kernel: KernelSpec,
    /// Saturation level; derived from the nonlinearities when absent.
    #[serde(default)]
    pub l0: Option<f64>,
}

fn no_kernel() -> KernelSpec {
    KernelSpec::None
}

impl ModelSpec {
    /// Fisher-KPP `u_t = u_xx + u (r − u)` without delay.
    pub fn fisher(env: ShiftedEnvironment) -> Self {
        ModelSpec { f1: F1::Fisher { env }, f2: F2::None, kernel: KernelSpec::None, l0: None }
    }

    pub fn f1(&self, t: f64, x: f64, u: f64) -> f64 {
        match &self.f1 {
            F1::Fisher { env } => u * (env.realize(t, x) - u),
            F1::LinearDeath { d } => -d * u,
        }
    }

    pub fn f2(&self, t: f64, x: f64, v: f64) -> f64 {
        match &self.f2 {
            F2::None => 0.0,
            F2::Ricker { env } => env.realize(t, x) * v * (-v).exp(),
        }
    }

    /// Upper bound of `G(L, L) / L = f1(L)/L + f2(L)/L` over `(t, x)`.
    fn growth_bound(&self, l: f64) -> f64 {
        let a = match &self.f1 {
            F1::Fisher { env } => env.sup() - l,
            F1::LinearDeath { d } => -d,
        };
        let b = match &self.f2 {
            F2::None => 0.0,
            F2::Ricker { env } => env.sup().max(0.0) * (-l).exp(),
        };
        a + b
    }

    /// The saturation level `L0`: given explicitly or the smallest `L` with
    /// `G(t, x, L, L) ≤ 0` for all `(t, x)`.
    pub fn l0(&self) -> Result<f64> {
        if let Some(l) = self.l0 {
            return Ok(l);
        }
        if self.growth_bound(0.0) <= 0.0 {
            return Ok(0.0);
        }
        let mut hi = 1.0;
        while self.growth_bound(hi) > 0.0 {
            hi *= 2.0;
            if hi > 1e6 {
                return Err(Error::Precondition("no saturation level: G(L, L) stays positive".into()));
            }
        }
        bisect(|l| Ok(self.growth_bound(l)), 0.0, hi, "saturation level")
    }

    /// Largest `G(t, x, L, L)` over the sampled points, for `L` in `levels`.
    pub fn max_saturated_growth(&self, samples: &[(f64, f64)], levels: &[f64]) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for &(t, x) in samples {
            for &l in levels {
                worst = worst.max(self.f1(t, x, l) + self.f2(t, x, l));
            }
        }
        worst
    }

    pub fn validate(&self) -> Result<()> {
        match &self.f1 {
            F1::Fisher { env } => env.validate()?,
            F1::LinearDeath { d } if !d.is_finite() => return Err(Error::Precondition(format!("death rate {d}"))),
            F1::LinearDeath { .. } => {}
        }
        if let F2::Ricker { env } = &self.f2 {
            env.validate()?;
            if matches!(self.kernel, KernelSpec::None) {
                return Err(Error::Precondition("a delayed term needs a kernel".into()));
            }
        }
        Ok(())
    }
}

/// Initial history, constant on `[−τ0, 0]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    /// `a min(1, e^{−μ x})`.
    IcMu { mu: f64, amplitude: f64 },
    /// `a (1 − (2x / W)²)₊`, supported on `[−W/2, W/2]`.
    IcInf { width: f64, height: f64 },
}

impl InitialData {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            InitialData::IcMu { mu, amplitude } => amplitude * (-mu * x).exp().min(1.0),
            InitialData::IcInf { width, height } => {
                let z = 2.0 * x / width;
                height * (1.0 - z * z).max(0.0)
            }
        }
    }

    pub fn sup(&self) -> f64 {
        match *self {
            InitialData::IcMu { amplitude, .. } => amplitude,
            InitialData::IcInf { height, .. } => height,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            InitialData::IcMu { mu, amplitude } => mu > 0.0 && mu.is_finite() && amplitude >= 0.0,
            InitialData::IcInf { width, height } => width > 0.0 && height >= 0.0 && height.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Precondition(format!("invalid initial data {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Diffusion {
    #[default]
    Explicit,
    CrankNicolson,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    pub x_lo: f64,
    pub x_hi: f64,
    pub dx: f64,
    /// Defaults to `0.25 dx²` for explicit diffusion and `0.25 dx` otherwise.
    pub dt: Option<f64>,
    pub t_end: f64,
    pub diffusion: Diffusion,
    /// Front levels; the first is the primary one.
    pub thetas: Vec<f64>,
    /// Interval between front samples.
    pub sample_every: f64,
    /// Interval between stored snapshots; `None` keeps only the listed times.
    pub snapshot_every: Option<f64>,
    pub snapshot_times: Vec<f64>,
    /// Cells kept between the lowest front and the right edge.
    pub edge_cells: usize,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            x_lo: -50.0,
            x_hi: 450.0,
            dx: 0.2,
            dt: None,
            t_end: 200.0,
            diffusion: Diffusion::Explicit,
            thetas: vec![0.1],
            sample_every: 0.5,
            snapshot_every: None,
            snapshot_times: Vec::new(),
            edge_cells: 20,
        }
    }
}

impl SimParams {
    pub fn resolved_dt(&self) -> f64 {
        self.dt.unwrap_or(match self.diffusion {
            Diffusion::Explicit => 0.25 * self.dx * self.dx,
            Diffusion::CrankNicolson => 0.25 * self.dx,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontSample {
    pub t: f64,
    /// `sup{x : u(t, x) ≥ θ}`, or `None` when `u < θ` everywhere.
    pub x: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontTrace {
    pub theta: f64,
    pub samples: Vec<FrontSample>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub u: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SimStats {
    pub steps: usize,
    pub dt: f64,
    pub dx: f64,
    pub bound: f64,
    pub max_u: f64,
    /// Negative undershoots reset to zero.
    pub clamps: usize,
    pub clamp_fraction: f64,
}

#[derive(Clone, Debug)]
pub struct SimResult {
    pub x: Vec<f64>,
    pub traces: Vec<FrontTrace>,
    pub snapshots: Vec<Snapshot>,
    pub final_u: Vec<f64>,
    pub t_end: f64,
    pub stats: SimStats,
}

impl SimResult {
    pub fn trace(&self, theta: f64) -> Option<&FrontTrace> {
        self.traces.iter().find(|tr| tr.theta == theta)
    }

    pub fn primary_trace(&self) -> &FrontTrace {
        &self.traces[0]
    }

    /// Snapshot stored at `t`, within half a step.
    pub fn snapshot_at(&self, t: f64) -> Option<&Snapshot> {
        let half = 0.5 * self.stats.dt;
        self.snapshots.iter().find(|s| (s.t - t).abs() <= half)
    }
}

/// Rightmost crossing of level `theta`, linearly interpolated; also returns
/// the grid index used.
pub fn front_position(x: &[f64], u: &[f64], theta: f64) -> Option<(f64, usize)> {
    let i = u.iter().rposition(|&v| v >= theta)?;
    if i + 1 == u.len() {
        return Some((x[i], i));
    }
    let (a, b) = (u[i], u[i + 1]);
    let frac = if a > b { ((a - theta) / (a - b)).clamp(0.0, 1.0) } else { 0.0 };
    Some((x[i] + frac * (x[i + 1] - x[i]), i))
}

/// Precomputed access into the ring buffer of delayed reaction values.
struct AtomStencil {
    weight: f64,
    /// Slices back from the current one and the weight of the older slice.
    lag: usize,
    lag_frac: f64,
    /// Grid offset of `x − y` and the weight of the right neighbour.
    shift: isize,
    shift_frac: f64,
}

impl AtomStencil {
    fn new(tau: f64, y: f64, weight: f64, dt: f64, dx: f64) -> Self {
        let m = tau / dt;
        let (lag, lag_frac) = if (m - m.round()).abs() <= 1e-9 * m.max(1.0) {
            (m.round() as usize, 0.0)
        } else {
            (m.floor() as usize, m - m.floor())
        };
        let k = -y / dx;
        let (shift, shift_frac) =
            if (k - k.round()).abs() <= 1e-9 * k.abs().max(1.0) { (k.round() as isize, 0.0) } else { (k.floor() as isize, k - k.floor()) };
        AtomStencil { weight, lag, lag_frac, shift, shift_frac }
    }
}

/// Tridiagonal solve with constant coefficients `(−a, 1 + 2a, −a)`, a
/// mirrored left end and a fixed zero right end.
fn crank_nicolson_solve(rhs: &mut [f64], a: f64, c_prime: &mut [f64]) {
    let n = rhs.len() - 1; // rhs[n] is the Dirichlet node
    let diag = 1.0 + 2.0 * a;
    // row 0: diag u0 − 2a u1
    c_prime[0] = -2.0 * a / diag;
    rhs[0] /= diag;
    for i in 1..n {
        let m = diag + a * c_prime[i - 1];
        c_prime[i] = -a / m;
        rhs[i] = (rhs[i] + a * rhs[i - 1]) / m;
    }
    rhs[n] = 0.0;
    for i in (0..n).rev() {
        rhs[i] -= c_prime[i] * rhs[i + 1];
    }
}

/// Integrates the model from the constant history `ic` up to `params.t_end`.
pub fn simulate(model: &ModelSpec, ic: &InitialData, params: &SimParams) -> Result<SimResult> {
    model.validate()?;
    ic.validate()?;
    let SimParams { x_lo, x_hi, dx, t_end, diffusion, .. } = *params;
    if !(dx > 0.0) || !(x_hi > x_lo + 10.0 * dx) || !(t_end >= 0.0) {
        return Err(Error::Precondition(format!("bad domain [{x_lo}, {x_hi}] with dx = {dx}")));
    }
    if params.thetas.is_empty() || params.thetas.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::Precondition("front levels must be positive".into()));
    }
    let dt = params.resolved_dt();
    let ratio = dt / (dx * dx);
    if !(dt > 0.0) {
        return Err(Error::Precondition(format!("time step {dt}")));
    }
    if diffusion == Diffusion::Explicit && ratio > 0.4 {
        return Err(Error::Cfl { ratio, limit: 0.4 });
    }
    let kernel = DelayKernel::from_spec(&model.kernel)?;
    let delayed = !matches!(model.f2, F2::None);

    let nx = ((x_hi - x_lo) / dx).round() as usize;
    let x: Vec<f64> = (0..=nx).map(|i| x_lo + i as f64 * dx).collect();
    let mut u: Vec<f64> = x.iter().map(|&xi| ic.eval(xi)).collect();
    u[nx] = 0.0;
    let bound = 2.0 * model.l0()?.max(ic.sup());

    let stencils: Vec<AtomStencil> = if delayed {
        kernel.atoms().iter().map(|a| AtomStencil::new(a.tau, a.y, a.weight, dt, dx)).collect()
    } else {
        Vec::new()
    };
    let depth = stencils.iter().map(|s| s.lag + 2).max().unwrap_or(1);
    // ring[k] holds f2 on the grid at step n − k (mod depth), negative steps
    // from the constant history
    let mut ring: Vec<Vec<f64>> = Vec::with_capacity(depth);
    let mut head = 0usize;
    if delayed {
        for k in 0..depth {
            let t = -(k as f64) * dt;
            ring.push(x.iter().zip(&u).map(|(&xi, &ui)| model.f2(t, xi, ui)).collect());
        }
        // slot of step n is (head + depth − k) % depth for lag k; head points at step 0
        ring.reverse();
        head = depth - 1;
    }

    let n_steps = (t_end / dt).round() as usize;
    let sample_stride = ((params.sample_every / dt).round() as usize).max(1);
    let snap_stride = params.snapshot_every.map(|s| ((s / dt).round() as usize).max(1));
    let snap_steps: Vec<usize> = params.snapshot_times.iter().map(|&t| (t / dt).round() as usize).collect();

    let mut traces: Vec<FrontTrace> =
        params.thetas.iter().map(|&theta| FrontTrace { theta, samples: Vec::new() }).collect();
    let mut snapshots = Vec::new();
    let mut stats = SimStats { dt, dx, bound, ..SimStats::default() };
    let mut next = vec![0.0; nx + 1];
    let mut c_prime = vec![0.0; nx + 1];
    let lowest = params.thetas.iter().copied().fold(f64::INFINITY, f64::min);

    let record = |n: usize, u: &[f64], traces: &mut Vec<FrontTrace>, snapshots: &mut Vec<Snapshot>| -> Result<()> {
        let t = n as f64 * dt;
        if n % sample_stride == 0 || n == n_steps {
            for tr in traces.iter_mut() {
                let fp = front_position(&x, u, tr.theta);
                if tr.theta == lowest {
                    if let Some((xf, i)) = fp {
                        if i + params.edge_cells >= nx {
                            return Err(Error::DomainExhausted { t, x: xf });
                        }
                    }
                }
                tr.samples.push(FrontSample { t, x: fp.map(|p| p.0) });
            }
        }
        if snap_stride.is_some_and(|s| n % s == 0) || snap_steps.contains(&n) || n == n_steps {
            if snapshots.last().is_none_or(|s: &Snapshot| s.t != t) {
                snapshots.push(Snapshot { t, u: u.to_vec() });
            }
        }
        Ok(())
    };
    record(0, &u, &mut traces, &mut snapshots)?;

    let inv_dx2 = 1.0 / (dx * dx);
    let idx = |i: isize| -> usize { i.clamp(0, nx as isize) as usize };
    for n in 0..n_steps {
        let t = n as f64 * dt;
        for i in 0..nx {
            let left = if i == 0 { u[1] } else { u[i - 1] };
            let lap = (left - 2.0 * u[i] + u[i + 1]) * inv_dx2;
            let mut react = model.f1(t, x[i], u[i]);
            for st in &stencils {
                let at = |lag: usize| -> f64 {
                    let slice = &ring[(head + depth - lag) % depth];
                    let j = i as isize + st.shift;
                    if st.shift_frac == 0.0 {
                        slice[idx(j)]
                    } else {
                        (1.0 - st.shift_frac) * slice[idx(j)] + st.shift_frac * slice[idx(j + 1)]
                    }
                };
                let g = if st.lag_frac == 0.0 {
                    at(st.lag)
                } else {
                    (1.0 - st.lag_frac) * at(st.lag) + st.lag_frac * at(st.lag + 1)
                };
                react += st.weight * g;
            }
            next[i] = match diffusion {
                Diffusion::Explicit => u[i] + dt * (lap + react),
                Diffusion::CrankNicolson => u[i] + dt * (0.5 * lap + react),
            };
        }
        next[nx] = 0.0;
        if diffusion == Diffusion::CrankNicolson {
            crank_nicolson_solve(&mut next, 0.5 * ratio, &mut c_prime);
        }
        let t_next = t + dt;
        for v in next.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
                stats.clamps += 1;
            } else if *v < 1e-300 {
                *v = 0.0;
            } else if *v > bound || !v.is_finite() {
                return Err(Error::BlowUp { t: t_next, value: *v, bound });
            }
        }
        std::mem::swap(&mut u, &mut next);
        stats.max_u = stats.max_u.max(u.iter().copied().fold(0.0, f64::max));
        if delayed {
            head = (head + 1) % depth;
            let slot = &mut ring[head];
            for ((g, &xi), &ui) in slot.iter_mut().zip(&x).zip(&u) {
                *g = model.f2(t_next, xi, ui);
            }
        }
        record(n + 1, &u, &mut traces, &mut snapshots)?;
    }
    stats.steps = n_steps;
    stats.clamp_fraction = if n_steps == 0 { 0.0 } else { stats.clamps as f64 / (n_steps * nx) as f64 };
    Ok(SimResult { x, traces, snapshots, final_u: u, t_end: n_steps as f64 * dt, stats })
}
