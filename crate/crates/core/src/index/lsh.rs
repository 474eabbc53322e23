use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Index;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LshParams {
    pub num_tables: usize,
    pub bits_per_table: usize,
    pub seed: u64,
}

impl Default for LshParams {
    fn default() -> Self {
        LshParams {
            num_tables: 8,
            bits_per_table: 16,
            seed: 0,
        }
    }
}

impl LshParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_tables == 0 {
            return Err(Error::InvalidParams("num_tables must be ≥ 1".into()));
        }
        if self.bits_per_table == 0 || self.bits_per_table > 64 {
            return Err(Error::InvalidParams(format!(
                "bits_per_table must be in 1..=64, got {}",
                self.bits_per_table
            )));
        }
        Ok(())
    }
}

/// Random-hyperplane signature tables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LshTables {
    params: LshParams,
    dim: usize,
    /// `num_tables × bits_per_table × dim` Gaussian directions.
    hyperplanes: Vec<f32>,
    buckets: Vec<HashMap<u64, Vec<u32>>>,
}

impl LshTables {
    pub(super) fn build(index: &Index, params: LshParams) -> Result<Self> {
        params.validate()?;
        let dim = index.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let hyperplanes = (0..params.num_tables * params.bits_per_table * dim)
            .map(|_| {
                let x: f64 = StandardNormal.sample(&mut rng);
                x as f32
            })
            .collect();
        let mut tables = LshTables {
            params,
            dim,
            hyperplanes,
            buckets: vec![HashMap::new(); params.num_tables],
        };
        for id in 0..index.len() as u32 {
            let sigs = tables.signatures(index.vector(id));
            for (table, sig) in tables.buckets.iter_mut().zip(sigs) {
                table.entry(sig).or_default().push(id);
            }
        }
        Ok(tables)
    }

    fn signature(&self, table: usize, v: &[f32]) -> u64 {
        let bits = self.params.bits_per_table;
        let mut sig = 0u64;
        for b in 0..bits {
            let start = (table * bits + b) * self.dim;
            let plane = &self.hyperplanes[start..start + self.dim];
            let dot: f64 = plane.iter().zip(v).map(|(&p, &x)| f64::from(p) * f64::from(x)).sum();
            if dot >= 0.0 {
                sig |= 1 << b;
            }
        }
        sig
    }

    pub fn signatures(&self, v: &[f32]) -> Vec<u64> {
        (0..self.params.num_tables).map(|t| self.signature(t, v)).collect()
    }

    /// Candidate ids for `query`: the union of matching buckets, else the
    /// Hamming-1 neighbors of each signature, else `None` (exact scan).
    pub(super) fn candidates(&self, query: &[f32], keep: &dyn Fn(u32) -> bool) -> Option<Vec<u32>> {
        let sigs = self.signatures(query);
        let collect = |probe: &dyn Fn(usize, u64) -> Vec<u64>| {
            let mut out: Vec<u32> = Vec::new();
            for (t, &sig) in sigs.iter().enumerate() {
                for key in probe(t, sig) {
                    if let Some(ids) = self.buckets[t].get(&key) {
                        out.extend(ids.iter().copied().filter(|&id| keep(id)));
                    }
                }
            }
            out.sort_unstable();
            out.dedup();
            out
        };
        let exact = collect(&|_, sig| vec![sig]);
        if !exact.is_empty() {
            return Some(exact);
        }
        let bits = self.params.bits_per_table;
        let near = collect(&|_, sig| (0..bits).map(|b| sig ^ (1 << b)).collect());
        if !near.is_empty() {
            return Some(near);
        }
        None
    }
}
