//! Exact viscosity solutions of the ray equation for homogeneous and
//! single-shift environments.

use crate::dispersion::DispersionRelation;
use crate::error::{Error, Result};
use crate::speeds::{bar_p, speed_homogeneous, speed_single_shift, underline_p, Decay};

use super::{FreeBoundaryFlag, RaySolution};

/// A closed-form solution, evaluated pointwise.
#[derive(Clone, Debug)]
pub enum ClosedForm {
    Homogeneous {
        rel: DispersionRelation,
        mu: Decay,
    },
    SingleShift {
        minus: DispersionRelation,
        plus: DispersionRelation,
        c1: f64,
        mu: Decay,
    },
}

/// One piece of a piecewise profile on `[from, ∞)` up to the next piece.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Piece {
    Zero,
    /// `p s − λ(p)` for the relation on the given side.
    Linear { p: f64, plus: bool },
    /// `s Ψ(s) − λ(Ψ(s))`.
    Legendre { plus: bool },
    /// `max(p s − λ(p), 0)`.
    Clipped { p: f64, plus: bool },
}

/// Pieces sorted by their left endpoint.
#[derive(Clone, Debug)]
pub struct PiecewiseRho {
    starts: Vec<f64>,
    pieces: Vec<Piece>,
    minus: DispersionRelation,
    plus: DispersionRelation,
    s_hat: f64,
    case: &'static str,
}

impl PiecewiseRho {
    fn rel(&self, plus: bool) -> &DispersionRelation {
        if plus {
            &self.plus
        } else {
            &self.minus
        }
    }

    pub fn eval(&self, s: f64) -> Result<f64> {
        let k = self.starts.partition_point(|&a| a <= s).saturating_sub(1);
        Ok(match self.pieces[k] {
            Piece::Zero => 0.0,
            Piece::Linear { p, plus } => p * s - self.rel(plus).lambda(p)?,
            Piece::Clipped { p, plus } => (p * s - self.rel(plus).lambda(p)?).max(0.0),
            Piece::Legendre { plus } => {
                let rel = self.rel(plus);
                let q = rel.psi(s)?;
                s * q - rel.lambda(q)?
            }
        })
    }

    /// Points where the profile may fail to be differentiable.
    pub fn kinks(&self) -> Result<Vec<f64>> {
        let mut out: Vec<f64> = self.starts[1..].to_vec();
        for piece in &self.pieces {
            if let Piece::Clipped { p, plus } = *piece {
                out.push(self.rel(plus).lambda(p)? / p);
            }
        }
        out.sort_by(f64::total_cmp);
        Ok(out)
    }

    pub fn s_hat(&self) -> f64 {
        self.s_hat
    }

    pub fn case(&self) -> &'static str {
        self.case
    }
}

fn build(
    minus: &DispersionRelation,
    plus: &DispersionRelation,
    parts: Vec<(f64, Piece)>,
    s_hat: f64,
    case: &'static str,
) -> PiecewiseRho {
    // a later piece starting earlier overrides pieces with empty intervals
    let mut starts: Vec<f64> = Vec::new();
    let mut pieces = Vec::new();
    for (a, p) in parts {
        while starts.last().is_some_and(|&last| last > a) {
            starts.pop();
            pieces.pop();
        }
        starts.push(a);
        pieces.push(p);
    }
    starts[0] = 0.0;
    PiecewiseRho { starts, pieces, minus: minus.clone(), plus: plus.clone(), s_hat, case }
}

/// Homogeneous profile on the `plus` side, as used both for homogeneous
/// environments and for slow shifts.
fn homogeneous_parts(rel: &DispersionRelation, mu: Decay) -> Result<Vec<(f64, Piece)>> {
    let ms = rel.mu_star()?;
    Ok(match mu {
        Decay::Finite(m) if m <= ms.mu => vec![(0.0, Piece::Clipped { p: m, plus: true })],
        Decay::Finite(m) => vec![
            (0.0, Piece::Zero),
            (ms.c, Piece::Legendre { plus: true }),
            (rel.lambda_prime(m)?, Piece::Linear { p: m, plus: true }),
        ],
        Decay::Infinite => vec![(0.0, Piece::Zero), (ms.c, Piece::Legendre { plus: true })],
    })
}

impl ClosedForm {
    pub fn profile(&self) -> Result<PiecewiseRho> {
        match self {
            ClosedForm::Homogeneous { rel, mu } => {
                let s_hat = speed_homogeneous(rel, *mu)?.s_hat;
                Ok(build(rel, rel, homogeneous_parts(rel, *mu)?, s_hat, "homogeneous"))
            }
            ClosedForm::SingleShift { minus, plus, c1, mu } => single_shift(minus, plus, *c1, *mu),
        }
    }

    /// Samples the profile on `s_i = i h`, `i = 0..=n`.
    pub fn sample(&self, h: f64, s_max: f64) -> Result<RaySolution> {
        if !(h > 0.0) || !(s_max > h) {
            return Err(Error::Precondition(format!("bad grid h = {h}, s_max = {s_max}")));
        }
        let prof = self.profile()?;
        let n = (s_max / h).round() as usize;
        let s: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
        let rho = s.iter().map(|&x| prof.eval(x)).collect::<Result<Vec<_>>>()?;
        let mu = match self {
            ClosedForm::Homogeneous { mu, .. } | ClosedForm::SingleShift { mu, .. } => *mu,
        };
        Ok(RaySolution {
            s,
            rho,
            h,
            s_hat: prof.s_hat(),
            flag: FreeBoundaryFlag::Interior,
            mu,
            mu_cap: mu.finite(),
            diagnostics: None,
        })
    }
}

fn single_shift(minus: &DispersionRelation, plus: &DispersionRelation, c1: f64, mu: Decay) -> Result<PiecewiseRho> {
    let sr = speed_single_shift(minus, plus, c1, mu)?;
    let msm = minus.mu_star()?;
    let msp = plus.mu_star()?;
    let top = |parts: &mut Vec<(f64, Piece)>, m: Decay| -> Result<()> {
        if let Decay::Finite(m) = m {
            parts.push((c1, Piece::Linear { p: m, plus: true }));
        }
        Ok(())
    };
    // behind the shift: either a clipped line (root below μ*−) or the
    // minus-side minimal profile joined to the line through the root
    let behind = |p: f64, parts: &mut Vec<(f64, Piece)>| -> Result<&'static str> {
        if p < msm.mu {
            parts.push((0.0, Piece::Clipped { p, plus: false }));
            Ok("pulled")
        } else {
            parts.push((0.0, Piece::Zero));
            parts.push((msm.c, Piece::Legendre { plus: false }));
            parts.push((minus.lambda_prime(p)?, Piece::Linear { p, plus: false }));
            Ok("minimal-minus")
        }
    };

    let mut parts = Vec::new();
    let case = match mu {
        Decay::Finite(m) if m <= msp.mu * (1.0 + 1e-12) => {
            if c1 <= plus.lambda(m)? / m {
                parts = homogeneous_parts(plus, mu)?;
                "decay-plus"
            } else {
                let up = underline_p(minus, plus, c1, m)?;
                let c = behind(up, &mut parts)?;
                top(&mut parts, mu)?;
                c
            }
        }
        _ => {
            let lp = match mu {
                Decay::Finite(m) => plus.lambda_prime(m)?,
                Decay::Infinite => f64::INFINITY,
            };
            if c1 <= msp.c {
                parts = homogeneous_parts(plus, mu)?;
                "minimal-plus"
            } else if c1 <= lp {
                let bp = bar_p(minus, plus, c1)?;
                let c = behind(bp, &mut parts)?;
                parts.push((c1, Piece::Legendre { plus: true }));
                if let Decay::Finite(m) = mu {
                    parts.push((lp, Piece::Linear { p: m, plus: true }));
                }
                c
            } else {
                let m = mu.finite().expect("finite");
                let up = underline_p(minus, plus, c1, m)?;
                let c = behind(up, &mut parts)?;
                top(&mut parts, mu)?;
                c
            }
        }
    };
    Ok(build(minus, plus, parts, sr.s_hat, case))
}
