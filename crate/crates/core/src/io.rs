//! CSV exports with fixed column layouts.

use std::io::Write;

use crate::dispersion::DispersionRelation;
use crate::error::Result;
use crate::hj::RaySolution;
use crate::simulate::{FrontTrace, SimResult};

/// `s, rho, rho_over_s`; the ratio is empty at `s = 0`.
pub fn write_rho<W: Write>(out: W, sol: &RaySolution) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["s", "rho", "rho_over_s"])?;
    for (&s, &r) in sol.s.iter().zip(&sol.rho) {
        let ratio = if s > 0.0 { (r / s).to_string() } else { String::new() };
        w.write_record([s.to_string(), r.to_string(), ratio])?;
    }
    w.flush()?;
    Ok(())
}

/// `t, x_theta`; the position is empty where no front was found.
pub fn write_front<W: Write>(out: W, trace: &FrontTrace) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "x_theta"])?;
    for s in &trace.samples {
        w.write_record([s.t.to_string(), s.x.map(|x| x.to_string()).unwrap_or_default()])?;
    }
    w.flush()?;
    Ok(())
}

/// Long format `t, x, u`, one row per stored grid value.
pub fn write_snapshots<W: Write>(out: W, result: &SimResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "x", "u"])?;
    for snap in &result.snapshots {
        for (&x, &u) in result.x.iter().zip(&snap.u) {
            w.write_record([snap.t.to_string(), x.to_string(), u.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `p, lambda, lambda_prime, lambda_over_p` on `p_min, p_min + dp, …, p_max`.
pub fn write_lambda<W: Write>(out: W, rel: &DispersionRelation, p_min: f64, p_max: f64, dp: f64) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["p", "lambda", "lambda_prime", "lambda_over_p"])?;
    let n = ((p_max - p_min) / dp).round() as usize;
    for k in 0..=n {
        let p = p_min + k as f64 * dp;
        let l = rel.lambda(p)?;
        let ratio = if p != 0.0 { (l / p).to_string() } else { String::new() };
        w.write_record([p.to_string(), l.to_string(), rel.lambda_prime(p)?.to_string(), ratio])?;
    }
    w.flush()?;
    Ok(())
}
