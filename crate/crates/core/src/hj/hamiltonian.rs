use std::sync::Arc;

use crate::dispersion::{DispersionRelation, LambdaTable};
use crate::environment::{Envelope, RayProfile};
use crate::error::Result;
use crate::kernels::DelayKernel;

/// `H̃(s, p)`: the root `λ(p)` of the relation with rates `(R1(s), R2(s))`
/// taken from the upper envelope. One table per distinct pair of rates.
#[derive(Clone, Debug)]
pub struct RayHamiltonian {
    breaks: Vec<f64>,
    seg_idx: Vec<usize>,
    break_idx: Vec<usize>,
    tables: Vec<LambdaTable>,
}

impl RayHamiltonian {
    pub fn new(profile: &RayProfile, kernel: &Arc<DelayKernel>, p_max: f64, dp: f64) -> Result<Self> {
        let breaks = profile.breaks();
        let mut pairs: Vec<(f64, f64)> = Vec::new();
        let mut index_of = |pair: (f64, f64)| -> usize {
            match pairs.iter().position(|q| q.0.to_bits() == pair.0.to_bits() && q.1.to_bits() == pair.1.to_bits()) {
                Some(i) => i,
                None => {
                    pairs.push(pair);
                    pairs.len() - 1
                }
            }
        };
        let seg_idx: Vec<usize> = profile.regimes().into_iter().map(&mut index_of).collect();
        let break_idx: Vec<usize> = breaks.iter().map(|&b| index_of(profile.eval(b, Envelope::Upper))).collect();
        let tables = pairs
            .iter()
            .map(|&(r1, r2)| {
                let k = if r2 == 0.0 { Arc::new(DelayKernel::absent()) } else { Arc::clone(kernel) };
                LambdaTable::new(DispersionRelation::new(r1, r2, k)?, -p_max, p_max, dp)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RayHamiltonian { breaks, seg_idx, break_idx, tables })
    }

    pub fn regime_index(&self, s: f64) -> usize {
        let k = self.breaks.partition_point(|&b| b < s);
        if k < self.breaks.len() && self.breaks[k] == s {
            self.break_idx[k]
        } else {
            self.seg_idx[k]
        }
    }

    pub fn table(&self, idx: usize) -> &LambdaTable {
        &self.tables[idx]
    }

    pub fn n_regimes(&self) -> usize {
        self.tables.len()
    }

    /// `(H̃(s, p), ∂p H̃(s, p))`.
    pub fn eval(&self, s: f64, p: f64) -> Result<(f64, f64)> {
        self.tables[self.regime_index(s)].eval(p)
    }
}
