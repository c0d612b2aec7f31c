//! Seeded ensembles of random instances and grid sweeps over them.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::lattice::WeightedModel;
use crate::operator::{estimate_dual_norm, estimate_norm, NormOptions};
use crate::sparse::{generate_sparse, BranchingProfile, SparseFamily};
use crate::theorems::{
    plain_ap_with_norm, sawyer_with_norms, structural_reports, theorem1_with_norm, theorem2_with_norm,
    VerificationReport,
};
use crate::weights::{generate_model, WeightLaw};

/// A generated `(model, family)` pair.
#[derive(Debug, Clone)]
pub struct Instance {
    pub seed: u64,
    pub model: WeightedModel,
    pub family: SparseFamily,
}

impl Instance {
    pub fn generate(depth: u32, seed: u64, law: WeightLaw, profile: BranchingProfile) -> Result<Self> {
        Ok(Instance { seed, model: generate_model(depth, seed, law)?, family: generate_sparse(depth, seed, profile) })
    }

    pub fn depth(&self) -> u32 {
        self.model.depth()
    }
}

/// Grid of sweep parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub depths: Vec<u32>,
    pub ps: Vec<f64>,
    pub deltas: Vec<f64>,
    pub seeds: u64,
    #[serde(default)]
    pub first_seed: u64,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            depths: vec![4, 6, 8],
            ps: vec![1.5, 2.0, 3.0],
            deltas: vec![0.1, 0.2, 0.5],
            seeds: 50,
            first_seed: 0,
        }
    }
}

/// One CSV line of a sweep summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub seed: u64,
    pub depth: u32,
    pub p: f64,
    pub delta: Option<f64>,
    pub inequality: String,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

impl From<&VerificationReport> for SweepRow {
    fn from(r: &VerificationReport) -> Self {
        SweepRow {
            seed: r.params.seed.unwrap_or_default(),
            depth: r.params.depth,
            p: r.params.p,
            delta: r.params.delta,
            inequality: r.name.name().to_string(),
            lhs: r.lhs,
            rhs: r.rhs,
            ratio: r.ratio,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub reports: Vec<VerificationReport>,
}

impl SweepOutcome {
    pub fn all_hold(&self) -> bool {
        self.reports.iter().all(|r| r.holds)
    }

    pub fn rows(&self) -> Vec<SweepRow> {
        self.reports.iter().map(SweepRow::from).collect()
    }

    /// Largest ratio over reports matching `name` and `p` (and `delta` when given).
    pub fn max_ratio(&self, name: crate::theorems::Inequality, p: f64, delta: Option<f64>) -> Option<f64> {
        self.reports
            .iter()
            .filter(|r| r.name == name && r.params.p == p && (delta.is_none() || r.params.delta == delta))
            .map(|r| r.ratio)
            .reduce(f64::max)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_rows_csv(&self.rows(), writer)
    }
}

pub fn write_rows_csv<W: Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["seed", "depth", "p", "delta", "inequality", "lhs", "rhs", "ratio"])?;
    for r in rows {
        out.serialize((r.seed, r.depth, r.p, r.delta, &r.inequality, r.lhs, r.rhs, r.ratio))?;
    }
    out.flush()?;
    Ok(())
}

/// Every report for one instance: per `p` the Sawyer check, the structural
/// checks and the plain `A_p` ratio, then per `δ` both bump theorems.
pub fn verify_instance(
    instance: &Instance,
    ps: &[f64],
    deltas: &[f64],
    opts: &NormOptions,
) -> Result<Vec<VerificationReport>> {
    let Instance { seed, model, family } = instance;
    let mut out = Vec::new();
    for &p in ps {
        let norm = estimate_norm(model, family, p, opts)?.value;
        let dual = estimate_dual_norm(model, family, p, opts)?.value;
        out.push(sawyer_with_norms(model, family, p, norm, dual)?);
        for mut r in structural_reports(model, family, p)? {
            r.params.p = p;
            out.push(r);
        }
        out.push(plain_ap_with_norm(model, p, norm)?);
        for &delta in deltas {
            out.push(theorem1_with_norm(model, family, p, delta, norm)?);
            out.push(theorem2_with_norm(model, family, p, delta, norm)?);
        }
    }
    Ok(out.into_iter().map(|r| r.with_seed(*seed)).collect())
}

/// Runs the grid; instances are processed in parallel and reported in
/// `(depth, seed)` order.
pub fn run_sweep(
    grid: &SweepGrid,
    law: WeightLaw,
    profile: BranchingProfile,
    opts: &NormOptions,
) -> Result<SweepOutcome> {
    let jobs: Vec<(u32, u64)> = grid
        .depths
        .iter()
        .flat_map(|&d| (grid.first_seed..grid.first_seed + grid.seeds).map(move |s| (d, s)))
        .collect();
    let per_instance: Vec<Vec<VerificationReport>> = jobs
        .par_iter()
        .map(|&(depth, seed)| {
            let instance = Instance::generate(depth, seed, law, profile)?;
            verify_instance(&instance, &grid.ps, &grid.deltas, opts)
        })
        .collect::<Result<_>>()?;
    Ok(SweepOutcome { reports: per_instance.into_iter().flatten().collect() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_sweep_writes_header_only() {
        let grid = SweepGrid { seeds: 0, ..SweepGrid::default() };
        let outcome =
            run_sweep(&grid, WeightLaw::default(), BranchingProfile::default(), &NormOptions::default()).unwrap();
        assert!(outcome.reports.is_empty());
        assert!(outcome.all_hold());
        let mut buf = Vec::new();
        outcome.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "seed,depth,p,delta,inequality,lhs,rhs,ratio\n");
    }

    #[test]
    fn small_sweep_holds_and_is_reproducible() {
        let grid = SweepGrid { depths: vec![3], ps: vec![1.5, 2.0], deltas: vec![0.2], seeds: 3, first_seed: 0 };
        let run =
            || run_sweep(&grid, WeightLaw::default(), BranchingProfile::default(), &NormOptions::default()).unwrap();
        let a = run();
        assert!(a.all_hold(), "{:#?}", a.reports.iter().filter(|r| !r.holds).collect::<Vec<_>>());
        let b = run();
        assert_eq!(a.rows(), b.rows());
        // per p: sawyer, 3 structural, plain_ap, 2 per delta
        assert_eq!(a.reports.len(), 3 * 2 * 7);
    }
}
