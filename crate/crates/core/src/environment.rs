//! Shifting environments `r(t, x) = base + ∑ r̃_i(x − c_i t)` and their
//! limits along rays `s = x / t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::DelayKernel;

/// Shape of a single shifted term, evaluated in the moving frame `z = x − c t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    /// `lo` for `z < 0`, `hi` for `z ≥ 0`.
    Step { lo: f64, hi: f64 },
    /// `lo + (hi − lo)(1 + tanh(z / width)) / 2`.
    Tanh { lo: f64, hi: f64, width: f64 },
    /// `lo` outside `|z| < width`, smooth bump peaking at `hi` at `z = 0`.
    Bump { lo: f64, hi: f64, width: f64 },
}

impl Profile {
    pub fn eval(&self, z: f64) -> f64 {
        match *self {
            Profile::Step { lo, hi } => {
                if z < 0.0 {
                    lo
                } else {
                    hi
                }
            }
            Profile::Tanh { lo, hi, width } => lo + (hi - lo) * 0.5 * (1.0 + (z / width).tanh()),
            Profile::Bump { lo, hi, width } => {
                let u = z / width;
                if u.abs() >= 1.0 {
                    lo
                } else {
                    lo + (hi - lo) * (1.0 - 1.0 / (1.0 - u * u)).exp()
                }
            }
        }
    }

    /// Limit as `z → −∞`.
    pub fn minus(&self) -> f64 {
        match *self {
            Profile::Step { lo, .. } | Profile::Tanh { lo, .. } | Profile::Bump { lo, .. } => lo,
        }
    }

    /// Limit as `z → +∞`.
    pub fn plus(&self) -> f64 {
        match *self {
            Profile::Step { hi, .. } | Profile::Tanh { hi, .. } => hi,
            Profile::Bump { lo, .. } => lo,
        }
    }

    pub fn sup(&self) -> f64 {
        match *self {
            Profile::Step { lo, hi } | Profile::Tanh { lo, hi, .. } | Profile::Bump { lo, hi, .. } => lo.max(hi),
        }
    }

    pub fn inf(&self) -> f64 {
        match *self {
            Profile::Step { lo, hi } | Profile::Tanh { lo, hi, .. } | Profile::Bump { lo, hi, .. } => lo.min(hi),
        }
    }

    fn width(&self) -> f64 {
        match *self {
            Profile::Step { .. } => 0.0,
            Profile::Tanh { width, .. } | Profile::Bump { width, .. } => width,
        }
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi, width) = match *self {
            Profile::Step { lo, hi } => (lo, hi, 1.0),
            Profile::Tanh { lo, hi, width } | Profile::Bump { lo, hi, width } => (lo, hi, width),
        };
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidEnvironment(format!("unbounded profile ({lo}, {hi})")));
        }
        if !(width > 0.0) || !width.is_finite() {
            return Err(Error::InvalidEnvironment(format!("profile width {width} must be positive")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftTerm {
    pub c: f64,
    pub profile: Profile,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftedEnvironment {
    #[serde(default)]
    pub base: f64,
    #[serde(default)]
    pub terms: Vec<ShiftTerm>,
}

impl ShiftedEnvironment {
    pub fn constant(r0: f64) -> Self {
        ShiftedEnvironment { base: r0, terms: Vec::new() }
    }

    pub fn single(c: f64, profile: Profile) -> Self {
        ShiftedEnvironment { base: 0.0, terms: vec![ShiftTerm { c, profile }] }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.base.is_finite() {
            return Err(Error::InvalidEnvironment(format!("base value {}", self.base)));
        }
        for t in &self.terms {
            if !t.c.is_finite() {
                return Err(Error::InvalidEnvironment(format!("shift speed {}", t.c)));
            }
            t.profile.validate()?;
        }
        Ok(())
    }

    pub fn realize(&self, t: f64, x: f64) -> f64 {
        self.base + self.terms.iter().map(|term| term.profile.eval(x - term.c * t)).sum::<f64>()
    }

    /// Upper bound of `|r|` over all `(t, x)`.
    pub fn sup_abs(&self) -> f64 {
        self.base.abs() + self.terms.iter().map(|t| t.profile.sup().abs().max(t.profile.inf().abs())).sum::<f64>()
    }

    /// Upper bound of `r` over all `(t, x)`.
    pub fn sup(&self) -> f64 {
        self.base + self.terms.iter().map(|t| t.profile.sup()).sum::<f64>()
    }

    /// Lower bound of `r` over all `(t, x)`.
    pub fn inf(&self) -> f64 {
        self.base + self.terms.iter().map(|t| t.profile.inf()).sum::<f64>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Envelope {
    Upper,
    Lower,
}

/// Piecewise-constant function of `s ≥ 0` with explicit values at breakpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    breaks: Vec<f64>,
    /// `breaks.len() + 1` values, one per open interval.
    segments: Vec<f64>,
    at_upper: Vec<f64>,
    at_lower: Vec<f64>,
}

impl StepFunction {
    pub fn constant(v: f64) -> Self {
        StepFunction { breaks: Vec::new(), segments: vec![v], at_upper: Vec::new(), at_lower: Vec::new() }
    }

    /// Jumps between `segments` at `breaks`; break values are the max/min of
    /// the adjacent limits.
    pub fn piecewise(breaks: Vec<f64>, segments: Vec<f64>) -> Result<Self> {
        if segments.len() != breaks.len() + 1 {
            return Err(Error::InvalidEnvironment(format!(
                "{} breakpoints need {} segment values, got {}",
                breaks.len(),
                breaks.len() + 1,
                segments.len()
            )));
        }
        let at_upper = (0..breaks.len()).map(|k| segments[k].max(segments[k + 1])).collect();
        let at_lower = (0..breaks.len()).map(|k| segments[k].min(segments[k + 1])).collect();
        Self::with_break_values(breaks, segments, at_upper, at_lower)
    }

    pub fn with_break_values(
        breaks: Vec<f64>,
        segments: Vec<f64>,
        at_upper: Vec<f64>,
        at_lower: Vec<f64>,
    ) -> Result<Self> {
        let n = breaks.len();
        if segments.len() != n + 1 || at_upper.len() != n || at_lower.len() != n {
            return Err(Error::InvalidEnvironment("inconsistent step function lengths".into()));
        }
        if breaks.windows(2).any(|w| !(w[0] < w[1])) || breaks.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidEnvironment(format!("breakpoints {breaks:?} not strictly increasing")));
        }
        if segments.iter().chain(&at_upper).chain(&at_lower).any(|v| !v.is_finite()) {
            return Err(Error::InvalidEnvironment("non-finite step function value".into()));
        }
        for k in 0..n {
            let adj_max = segments[k].max(segments[k + 1]);
            let adj_min = segments[k].min(segments[k + 1]);
            if at_upper[k] < adj_max || at_lower[k] > adj_min {
                return Err(Error::InvalidEnvironment(format!(
                    "break values at s = {} do not envelope the one-sided limits",
                    breaks[k]
                )));
            }
        }
        Ok(StepFunction { breaks, segments, at_upper, at_lower })
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn segments(&self) -> &[f64] {
        &self.segments
    }

    pub fn break_values(&self, env: Envelope) -> &[f64] {
        match env {
            Envelope::Upper => &self.at_upper,
            Envelope::Lower => &self.at_lower,
        }
    }

    pub fn eval(&self, s: f64, env: Envelope) -> f64 {
        let k = self.breaks.partition_point(|&b| b < s);
        if k < self.breaks.len() && self.breaks[k] == s {
            return match env {
                Envelope::Upper => self.at_upper[k],
                Envelope::Lower => self.at_lower[k],
            };
        }
        self.segments[k]
    }

    fn all_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.segments.iter().chain(&self.at_upper).chain(&self.at_lower).copied()
    }

    fn is_constant(&self) -> bool {
        let v = self.segments[0];
        self.all_values().all(|x| x == v)
    }

    /// Monotone direction of the u.s.c. representative: `Some(1)` for
    /// non-decreasing, `Some(-1)` non-increasing, `Some(0)` constant.
    fn monotone_direction(&self) -> Option<i8> {
        let mut seq = Vec::with_capacity(2 * self.breaks.len() + 1);
        for k in 0..self.breaks.len() {
            seq.push(self.segments[k]);
            seq.push(self.at_upper[k]);
        }
        seq.push(*self.segments.last().expect("nonempty"));
        let up = seq.windows(2).all(|w| w[0] <= w[1]);
        let down = seq.windows(2).all(|w| w[0] >= w[1]);
        match (up, down) {
            (true, true) => Some(0),
            (true, false) => Some(1),
            (false, true) => Some(-1),
            (false, false) => None,
        }
    }

    fn locally_monotone(&self) -> bool {
        (0..self.breaks.len()).all(|k| {
            let (a, v, b) = (self.segments[k], self.at_upper[k], self.segments[k + 1]);
            (a <= v && v <= b) || (a >= v && v >= b)
        })
    }

    fn add(&self, other: &StepFunction) -> StepFunction {
        let mut breaks: Vec<f64> = self.breaks.iter().chain(&other.breaks).copied().collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let mut segments = Vec::with_capacity(breaks.len() + 1);
        for k in 0..=breaks.len() {
            let s = match (k.checked_sub(1).map(|j| breaks[j]), breaks.get(k)) {
                (None, None) => 1.0,
                (None, Some(&b)) => b - 1.0,
                (Some(a), None) => a + 1.0,
                (Some(a), Some(&b)) => 0.5 * (a + b),
            };
            segments.push(self.eval(s, Envelope::Upper) + other.eval(s, Envelope::Upper));
        }
        let at_upper = breaks.iter().map(|&b| self.eval(b, Envelope::Upper) + other.eval(b, Envelope::Upper)).collect();
        let at_lower = breaks.iter().map(|&b| self.eval(b, Envelope::Lower) + other.eval(b, Envelope::Lower)).collect();
        StepFunction { breaks, segments, at_upper, at_lower }
    }
}

/// Flags that cannot be derived from the stored values.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesisTags {
    /// The decay clause on `R2` near infinity, as declared by the user.
    #[serde(default)]
    pub r2_decay_declared: bool,
}

/// Ray-homogenized growth rates `R1(s)`, `R2(s)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayProfile {
    pub r1: StepFunction,
    pub r2: StepFunction,
    #[serde(default)]
    pub tags: HypothesisTags,
}

impl RayProfile {
    pub fn constant(r1: f64, r2: f64) -> Self {
        RayProfile { r1: StepFunction::constant(r1), r2: StepFunction::constant(r2), tags: HypothesisTags::default() }
    }

    pub fn from_parts(r1: StepFunction, r2: StepFunction) -> Self {
        RayProfile { r1, r2, tags: HypothesisTags::default() }
    }

    /// One jump at `c1` from `(R1−, R2−)` to `(R1+, R2+)`.
    pub fn single_shift(c1: f64, minus: (f64, f64), plus: (f64, f64)) -> Result<Self> {
        Ok(Self::from_parts(
            StepFunction::piecewise(vec![c1], vec![minus.0, plus.0])?,
            StepFunction::piecewise(vec![c1], vec![minus.1, plus.1])?,
        ))
    }

    pub fn eval(&self, s: f64, env: Envelope) -> (f64, f64) {
        (self.r1.eval(s, env), self.r2.eval(s, env))
    }

    /// Union of the breakpoints of both rates.
    pub fn breaks(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.r1.breaks.iter().chain(&self.r2.breaks).copied().collect();
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    /// Constant `(R1, R2)` pairs on the open intervals between breakpoints.
    pub fn regimes(&self) -> Vec<(f64, f64)> {
        let breaks = self.breaks();
        (0..=breaks.len())
            .map(|k| {
                let s = match (k.checked_sub(1).map(|j| breaks[j]), breaks.get(k)) {
                    (None, None) => 1.0,
                    (None, Some(&b)) => 0.5 * b,
                    (Some(a), None) => a + 1.0,
                    (Some(a), Some(&b)) => 0.5 * (a + b),
                };
                self.eval(s, Envelope::Upper)
            })
            .collect()
    }

    fn sum(&self) -> StepFunction {
        self.r1.add(&self.r2)
    }
}

/// Ray limit of a shifted environment: a term with speed `c` contributes its
/// `−∞` limit for `s < c`, its `+∞` limit for `s > c`, and its sup/inf at `s = c`.
pub fn ray_limit(env: &ShiftedEnvironment) -> Result<StepFunction> {
    env.validate()?;
    let mut speeds: Vec<f64> = env.terms.iter().map(|t| t.c).filter(|&c| c > 0.0).collect();
    speeds.sort_by(f64::total_cmp);
    speeds.dedup();

    let side_value = |s: f64| -> f64 {
        env.base
            + env
                .terms
                .iter()
                .map(|t| if s > t.c { t.profile.plus() } else { t.profile.minus() })
                .sum::<f64>()
    };
    let mut segments = Vec::with_capacity(speeds.len() + 1);
    for k in 0..=speeds.len() {
        let s = match (k.checked_sub(1).map(|j| speeds[j]), speeds.get(k)) {
            (None, None) => 1.0,
            (None, Some(&b)) => 0.5 * b,
            (Some(a), None) => a + 1.0,
            (Some(a), Some(&b)) => 0.5 * (a + b),
        };
        segments.push(side_value(s));
    }
    let mut at_upper = Vec::with_capacity(speeds.len());
    let mut at_lower = Vec::with_capacity(speeds.len());
    for &c in &speeds {
        let others: f64 = env.base
            + env
                .terms
                .iter()
                .filter(|t| t.c != c)
                .map(|t| if c > t.c { t.profile.plus() } else { t.profile.minus() })
                .sum::<f64>();
        let same: Vec<Profile> = env.terms.iter().filter(|t| t.c == c).map(|t| t.profile).collect();
        let (hi, lo) = sup_inf_of_sum(&same);
        at_upper.push(others + hi);
        at_lower.push(others + lo);
    }
    StepFunction::with_break_values(speeds, segments, at_upper, at_lower)
}

/// Sup and inf over `z` of a sum of profiles sharing one shift speed.
fn sup_inf_of_sum(profiles: &[Profile]) -> (f64, f64) {
    if let [p] = profiles {
        return (p.sup(), p.inf());
    }
    let minus: f64 = profiles.iter().map(Profile::minus).sum();
    let plus: f64 = profiles.iter().map(Profile::plus).sum();
    let w = profiles.iter().map(Profile::width).fold(1.0, f64::max);
    let (mut hi, mut lo) = (minus.max(plus), minus.min(plus));
    let n = 40_001;
    for i in 0..n {
        let z = -20.0 * w + 40.0 * w * i as f64 / (n - 1) as f64;
        let v: f64 = profiles.iter().map(|p| p.eval(z)).sum();
        hi = hi.max(v);
        lo = lo.min(v);
    }
    for z in [-0.0, 0.0] {
        let v: f64 = profiles.iter().map(|p| p.eval(z)).sum();
        hi = hi.max(v);
        lo = lo.min(v);
    }
    (hi, lo)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Clause {
    pub name: &'static str,
    pub passed: bool,
    /// Whether a failure rejects the configuration.
    pub required: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub clauses: Vec<Clause>,
}

impl HypothesisReport {
    pub fn accepted(&self) -> bool {
        self.clauses.iter().all(|c| c.passed || !c.required)
    }

    pub fn first_failure(&self) -> Option<&Clause> {
        self.clauses.iter().find(|c| c.required && !c.passed)
    }

    pub fn clause(&self, name: &str) -> Option<&Clause> {
        self.clauses.iter().find(|c| c.name == name)
    }
}

pub fn check_hypotheses(profile: &RayProfile, kernel: &DelayKernel) -> HypothesisReport {
    let mut clauses = Vec::new();
    let mut push = |name, passed, required, detail: String| clauses.push(Clause { name, passed, required, detail });

    let sum = profile.sum();
    let low = sum
        .segments
        .iter()
        .chain(&sum.at_lower)
        .copied()
        .fold(f64::INFINITY, f64::min);
    push("positivity", low > 0.0, true, format!("min of lower R1 + R2 is {low}"));

    let r2_min = profile.r2.all_values().fold(f64::INFINITY, f64::min);
    push("r2-nonnegative", r2_min >= 0.0, true, format!("min R2 is {r2_min}"));

    let d1 = profile.r1.monotone_direction();
    let d2 = profile.r2.monotone_direction();
    let same = matches!((d1, d2), (Some(a), Some(b)) if a == 0 || b == 0 || a == b);
    push("monotone-same-direction", same, false, format!("directions R1 {d1:?}, R2 {d2:?}"));

    let continuous = profile.r1.is_constant();
    let alt_ii = continuous && d2.is_some();
    push("continuous-r1-monotone-r2", alt_ii, false, format!("R1 continuous: {continuous}, R2 monotone: {}", d2.is_some()));

    let alt_iii = profile.r1.locally_monotone() && sum.locally_monotone();
    push(
        "piecewise-constant-r2-locally-monotone",
        alt_iii,
        false,
        format!("R1 locally monotone: {}, R1 + R2 locally monotone: {}", profile.r1.locally_monotone(), sum.locally_monotone()),
    );
    push("structure", same || alt_ii || alt_iii, true, "at least one structural alternative holds".into());

    // piecewise-constant R2 is constant on its last interval
    let last = *profile.r2.segments.last().expect("nonempty");
    push("r2-eventually-nonincreasing", true, false, format!("R2 is constant ({last}) beyond its last breakpoint"));

    push(
        "r2-decay-declared",
        profile.tags.r2_decay_declared,
        false,
        "declared tag only; not verifiable from samples".into(),
    );

    match kernel.one_sided_tau1() {
        Some(tau1) => push(
            "one-sided-kernel",
            kernel.support_one_sided(tau1),
            false,
            format!("no mass at y < 0 for tau <= {tau1}"),
        ),
        None => push("one-sided-kernel", false, false, "no one-sided support declared".into()),
    }

    let r1_low = profile
        .r1
        .segments
        .iter()
        .chain(&profile.r1.at_lower)
        .copied()
        .fold(f64::INFINITY, f64::min);
    push(
        "persistence-sufficient",
        r1_low > 0.0,
        false,
        format!("min of lower R1 is {r1_low}; persistence is assumed otherwise"),
    );
    HypothesisReport { clauses }
}
