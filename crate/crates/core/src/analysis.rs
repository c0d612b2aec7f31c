//! Maximal function, entropy functional, bump constants and testing constants.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{all_cubes, pairwise_sum, pow2, CellFunction, Cube, CubeTable, Measure, WeightedModel};
use crate::sparse::SparseFamily;

/// `p' = p / (p - 1)`.
pub fn dual_exponent(p: f64) -> f64 {
    p / (p - 1.0)
}

pub(crate) fn check_exponent(p: f64) -> Result<()> {
    if !(p.is_finite() && p > 1.0) {
        return Err(Error::Config(format!("exponent must satisfy 1 < p < ∞, got {p}")));
    }
    Ok(())
}

/// Which of the two symmetric conditions a constant measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// `[w,σ]` with exponent `p`, localized in `σ`.
    #[serde(rename = "w,sigma")]
    WSigma,
    /// `[σ,w]` with exponent `p'`, localized in `w`.
    #[serde(rename = "sigma,w")]
    SigmaW,
}

impl Direction {
    /// `(outer, inner, exponent)`: the constant is built from
    /// `⟨outer⟩_Q ⟨inner⟩_Q^(exponent-1)` and bumped through `inner`.
    pub fn roles(self, p: f64) -> (Measure, Measure, f64) {
        match self {
            Direction::WSigma => (Measure::W, Measure::Sigma, p),
            Direction::SigmaW => (Measure::Sigma, Measure::W, dual_exponent(p)),
        }
    }
}

/// Dyadic maximal function `Mg(x) = max_{Q ∋ x} ⟨|g|⟩_Q` over all lattice levels.
pub fn dyadic_maximal(model: &WeightedModel, g: &CellFunction) -> Result<CellFunction> {
    model.check_function(g)?;
    let depth = model.depth();
    let h = model.cell_length();
    let sums = CubeTable::sums_of(&g.values.iter().map(|v| v.abs() * h).collect::<Vec<_>>());
    // root-to-leaf running maximum of the averages
    let mut running = vec![sums.get(Cube::ROOT)];
    for level in 1..=depth {
        let scale = pow2(level as i32);
        running = sums.level(level).iter().enumerate().map(|(k, s)| running[k / 2].max(s * scale)).collect();
    }
    Ok(CellFunction { depth, values: running })
}

/// `ρ_μ(Q) = μ(Q)^-1 ∫_Q M(1_Q μ)` for `μ` one of the weights.
pub fn entropy_rho(model: &WeightedModel, which: Measure, cube: Cube) -> Result<f64> {
    model.check_cube(cube)?;
    let table = model
        .measure_table(which)
        .ok_or_else(|| Error::Domain("entropy functional needs a weight, not Lebesgue".into()))?;
    let depth = model.depth();
    let cells = cube.cells(depth);
    let mut running = vec![f64::NEG_INFINITY; cells.len()];
    for level in (cube.level..=depth).rev() {
        let scale = pow2(level as i32);
        let shift = depth - level;
        for (i, c) in cells.clone().enumerate() {
            let avg = table.level(level)[c >> shift] * scale;
            running[i] = running[i].max(avg);
        }
    }
    Ok(localized_integral(&running, model.cell_length()) / table.get(cube))
}

fn localized_integral(running: &[f64], h: f64) -> f64 {
    pairwise_sum(&running.iter().map(|v| v * h).collect::<Vec<_>>())
}

/// `ρ_μ(Q)` for every cube of the lattice.
pub fn entropy_table(model: &WeightedModel, which: Measure) -> Result<CubeTable> {
    let table = model
        .measure_table(which)
        .ok_or_else(|| Error::Domain("entropy functional needs a weight, not Lebesgue".into()))?;
    let depth = model.depth();
    let h = model.cell_length();
    let mut running = vec![f64::NEG_INFINITY; model.cells()];
    let mut out = CubeTable::filled(depth, 0.0);
    for level in (0..=depth).rev() {
        let scale = pow2(level as i32);
        let shift = depth - level;
        let averages = table.level(level);
        for (c, r) in running.iter_mut().enumerate() {
            *r = r.max(averages[c >> shift] * scale);
        }
        let block = 1usize << shift;
        for (k, chunk) in running.chunks_exact(block).enumerate() {
            let q = Cube { level, index: k as u64 };
            out.set(q, localized_integral(chunk, h) / table.get(q));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BumpKind {
    /// `t ↦ (1 + log₂ t)^(p(1+δ))` on `[1, ∞)`.
    EntropyEps,
    /// `t ↦ (1 + |log₂ t|)^(p(1+δ))` on `(0, ∞)`.
    DirectAlpha,
}

/// The auxiliary bump function attached to an exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpFunction {
    pub kind: BumpKind,
    pub p: f64,
    pub delta: f64,
}

/// Partial-sum evidence that `Σ_r bump(2^r)^(-1/p)` converges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummabilityCertificate {
    pub terms: u64,
    pub partial_sum: f64,
    pub last_increment: f64,
    /// Integral-test bound on the remaining tail.
    pub tail_bound: f64,
}

impl BumpFunction {
    pub fn entropy(p: f64, delta: f64) -> Result<Self> {
        Self::checked(BumpKind::EntropyEps, p, delta)
    }

    pub fn direct(p: f64, delta: f64) -> Result<Self> {
        Self::checked(BumpKind::DirectAlpha, p, delta)
    }

    fn checked(kind: BumpKind, p: f64, delta: f64) -> Result<Self> {
        check_exponent(p)?;
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::Config(format!("delta must be positive, got {delta}")));
        }
        Ok(BumpFunction { kind, p, delta })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let power = self.p * (1.0 + self.delta);
        match self.kind {
            BumpKind::EntropyEps => (1.0 + t.log2()).powf(power),
            BumpKind::DirectAlpha => (1.0 + t.log2().abs()).powf(power),
        }
    }

    /// Sums `bump(2^r)^(-1/p)` over `r = 0..=terms` (entropy) or
    /// `r = -terms..=terms` (direct), smallest terms first.
    pub fn summability(&self, terms: u64) -> SummabilityCertificate {
        let term = |r: f64| self.eval(r.exp2()).powf(-1.0 / self.p);
        let one_sided: Vec<f64> = (0..=terms).rev().map(|r| term(r as f64)).collect();
        let tail = (1.0 + terms as f64).powf(-self.delta) / self.delta;
        match self.kind {
            BumpKind::EntropyEps => SummabilityCertificate {
                terms,
                partial_sum: one_sided.iter().sum(),
                last_increment: one_sided[0],
                tail_bound: tail,
            },
            BumpKind::DirectAlpha => {
                let negative: f64 = (1..=terms).rev().map(|r| term(-(r as f64))).sum();
                SummabilityCertificate {
                    terms,
                    partial_sum: one_sided.iter().sum::<f64>() + negative,
                    last_increment: one_sided[0] + term(-(terms as f64)),
                    tail_bound: 2.0 * tail,
                }
            }
        }
    }
}

/// One row of a per-cube table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubeValue {
    pub level: u32,
    pub index: u64,
    pub value: f64,
}

/// A supremum over cubes with the cube attaining it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantReport {
    pub value: f64,
    pub witness: Cube,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<CubeValue>>,
}

impl ConstantReport {
    /// Supremum over the listed `(cube, value)` pairs; ties go to the first.
    pub fn from_values(values: Vec<(Cube, f64)>, keep_table: bool) -> Result<Self> {
        let mut best: Option<(Cube, f64)> = None;
        for &(q, v) in &values {
            if v.is_nan() {
                return Err(Error::Domain(format!("NaN constant at {q}")));
            }
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((q, v));
            }
        }
        let (witness, value) = best.ok_or_else(|| Error::Domain("supremum over an empty set".into()))?;
        let table = keep_table.then(|| {
            values.into_iter().map(|(q, value)| CubeValue { level: q.level, index: q.index, value }).collect()
        });
        Ok(ConstantReport { value, witness, table })
    }

    pub fn from_table(table: &CubeTable, keep_table: bool) -> Self {
        let values = all_cubes(table.depth()).map(|q| (q, table.get(q))).collect();
        Self::from_values(values, keep_table).expect("lattice tables are nonempty")
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["level", "index", "value"])?;
        for row in self.table.iter().flatten() {
            out.serialize((row.level, row.index, row.value))?;
        }
        out.flush()?;
        Ok(())
    }
}

fn check_bump(bump: &BumpFunction, kind: BumpKind, exponent: f64) -> Result<()> {
    if bump.kind != kind {
        return Err(Error::Config(format!("expected a {kind:?} bump, got {:?}", bump.kind)));
    }
    if (bump.p - exponent).abs() > 1e-12 * exponent {
        return Err(Error::Config(format!("bump exponent {} does not match the required exponent {exponent}", bump.p)));
    }
    Ok(())
}

/// `⟨outer⟩_Q ⟨inner⟩_Q^(q-1)` for every cube.
fn ap_table(model: &WeightedModel, p: f64, direction: Direction) -> CubeTable {
    let (outer, inner, q) = direction.roles(p);
    let mut table = CubeTable::filled(model.depth(), 0.0);
    for cube in all_cubes(model.depth()) {
        let v = model.average_unchecked(outer, cube) * model.average_unchecked(inner, cube).powf(q - 1.0);
        table.set(cube, v);
    }
    table
}

/// Per-cube `⟨w⟩⟨σ⟩^(p-1) ρ_σ ε_p(ρ_σ)` (or its `(σ,w)` mirror with `p'`).
pub fn entropy_bump_table(
    model: &WeightedModel,
    p: f64,
    eps: &BumpFunction,
    direction: Direction,
) -> Result<CubeTable> {
    check_exponent(p)?;
    let (_, inner, q) = direction.roles(p);
    check_bump(eps, BumpKind::EntropyEps, q)?;
    let rho = entropy_table(model, inner)?;
    let mut table = ap_table(model, p, direction);
    for cube in all_cubes(model.depth()) {
        let r = rho.get(cube);
        table.set(cube, table.get(cube) * r * eps.eval(r));
    }
    Ok(table)
}

/// `[w,σ]_{p,ε_p}` (or `[σ,w]_{p',ε_p'}`) over every cube of the lattice.
pub fn entropy_bump_constant(
    model: &WeightedModel,
    p: f64,
    eps: &BumpFunction,
    direction: Direction,
) -> Result<ConstantReport> {
    Ok(ConstantReport::from_table(&entropy_bump_table(model, p, eps, direction)?, false))
}

pub fn direct_bump_table(
    model: &WeightedModel,
    p: f64,
    alpha: &BumpFunction,
    direction: Direction,
) -> Result<CubeTable> {
    check_exponent(p)?;
    let (_, inner, q) = direction.roles(p);
    check_bump(alpha, BumpKind::DirectAlpha, q)?;
    let mut table = ap_table(model, p, direction);
    for cube in all_cubes(model.depth()) {
        let avg = model.average_unchecked(inner, cube);
        table.set(cube, table.get(cube) * alpha.eval(avg));
    }
    Ok(table)
}

/// `[[w,σ]]_{p,α_p}` (or `[[σ,w]]_{p',α_p'}`) over every cube of the lattice.
pub fn direct_bump_constant(
    model: &WeightedModel,
    p: f64,
    alpha: &BumpFunction,
    direction: Direction,
) -> Result<ConstantReport> {
    Ok(ConstantReport::from_table(&direct_bump_table(model, p, alpha, direction)?, false))
}

/// The unbumped joint characteristic `sup_Q ⟨w⟩_Q ⟨σ⟩_Q^(p-1)` over the lattice.
pub fn plain_ap(model: &WeightedModel, p: f64, direction: Direction) -> Result<ConstantReport> {
    check_exponent(p)?;
    Ok(ConstantReport::from_table(&ap_table(model, p, direction), false))
}

/// `[w,σ]^𝒬_p = sup_{Q∈𝒬} ⟨w⟩_Q ⟨σ⟩_Q^(p-1)`.
pub fn restricted_ap(model: &WeightedModel, p: f64, collection: &[Cube], direction: Direction) -> Result<f64> {
    check_exponent(p)?;
    if collection.is_empty() {
        return Err(Error::Domain("restricted A_p over an empty collection".into()));
    }
    let (outer, inner, q) = direction.roles(p);
    let mut best = f64::NEG_INFINITY;
    for cube in collection {
        model.check_cube(*cube)?;
        let v = model.average_unchecked(outer, *cube) * model.average_unchecked(inner, *cube).powf(q - 1.0);
        best = best.max(v);
    }
    Ok(best)
}

/// Localized testing integrals
/// `v(P)^-1 ∫_P (Σ_{Q∈S, Q⊆P} ⟨v⟩_Q 1_Q)^q u` for every member `P`.
fn testing_values(
    model: &WeightedModel,
    family: &SparseFamily,
    q: f64,
    averaged: Measure,
    integrated: Measure,
) -> Result<Vec<(Cube, f64)>> {
    if family.depth() != model.depth() {
        return Err(Error::DepthMismatch { expected: model.depth(), actual: family.depth() });
    }
    let depth = model.depth();
    let h = model.cell_length();
    let density = model.density(integrated).expect("weights have densities");
    let norm_table = model.measure_table(averaged).expect("weights have tables");
    let mut stack = vec![0.0; model.cells()];
    let mut values = Vec::with_capacity(family.len());
    for level in (0..=depth).rev() {
        let members: Vec<Cube> = family.cubes().iter().copied().filter(|c| c.level == level).collect();
        for p in &members {
            let avg = model.average_unchecked(averaged, *p);
            for c in p.cells(depth) {
                stack[c] += avg;
            }
        }
        for p in members {
            let terms: Vec<f64> = p.cells(depth).map(|c| stack[c].powf(q) * density[c] * h).collect();
            values.push((p, pairwise_sum(&terms) / norm_table.get(p)));
        }
    }
    values.sort_by_key(|(c, _)| *c);
    Ok(values)
}

/// Testing constants `(T1, T2)`; `T1` with exponent `p` integrates against `w`,
/// `T2` with exponent `p'` integrates against `σ`. Witnesses are members of the family.
pub fn testing_constants(
    model: &WeightedModel,
    family: &SparseFamily,
    p: f64,
) -> Result<(ConstantReport, ConstantReport)> {
    testing_constants_with_tables(model, family, p, false)
}

pub fn testing_constants_with_tables(
    model: &WeightedModel,
    family: &SparseFamily,
    p: f64,
    keep_table: bool,
) -> Result<(ConstantReport, ConstantReport)> {
    check_exponent(p)?;
    if family.is_empty() {
        return Err(Error::Domain("testing constants over an empty family".into()));
    }
    let t1 = testing_values(model, family, p, Measure::Sigma, Measure::W)?;
    let t2 = testing_values(model, family, dual_exponent(p), Measure::W, Measure::Sigma)?;
    Ok((ConstantReport::from_values(t1, keep_table)?, ConstantReport::from_values(t2, keep_table)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> WeightedModel {
        WeightedModel::new(1, vec![1.0, 1.0], vec![3.0, 1.0]).unwrap()
    }

    #[test]
    fn maximal_examples() {
        let m = example();
        let g = CellFunction::new(1, vec![3.0, 1.0]).unwrap();
        assert_eq!(dyadic_maximal(&m, &g).unwrap().values, vec![3.0, 2.0]);
        let c = CellFunction::constant(1, 0.7);
        assert_eq!(dyadic_maximal(&m, &c).unwrap().values, vec![0.7, 0.7]);
    }

    #[test]
    fn rho_examples() {
        let m = example();
        assert_eq!(entropy_rho(&m, Measure::Sigma, Cube::ROOT).unwrap(), 1.25);
        assert_eq!(entropy_rho(&m, Measure::Sigma, Cube { level: 1, index: 0 }).unwrap(), 1.0);
        let table = entropy_table(&m, Measure::Sigma).unwrap();
        assert_eq!(table.get(Cube::ROOT), 1.25);
        let flat = WeightedModel::constant(5, 3.0).unwrap();
        for q in all_cubes(5) {
            assert_eq!(entropy_rho(&flat, Measure::W, q).unwrap(), 1.0);
        }
        assert!(entropy_rho(&m, Measure::Lebesgue, Cube::ROOT).is_err());
    }

    #[test]
    fn rho_single_matches_table() {
        let sigma: Vec<f64> = (0..32).map(|i| 1.0 + ((i * 7) % 5) as f64 * 0.3).collect();
        let m = WeightedModel::new(5, vec![1.0; 32], sigma).unwrap();
        let table = entropy_table(&m, Measure::Sigma).unwrap();
        for q in all_cubes(5) {
            assert_eq!(table.get(q), entropy_rho(&m, Measure::Sigma, q).unwrap());
        }
    }

    #[test]
    fn bump_shapes() {
        let eps = BumpFunction::entropy(2.0, 0.2).unwrap();
        assert_eq!(eps.eval(1.0), 1.0);
        assert!(eps.eval(4.0) > eps.eval(2.0));
        let alpha = BumpFunction::direct(2.0, 0.2).unwrap();
        assert_eq!(alpha.eval(1.0), 1.0);
        assert!(alpha.eval(0.25) > alpha.eval(0.5));
        assert_eq!(alpha.eval(0.25), alpha.eval(4.0));
        assert!(BumpFunction::entropy(1.0, 0.2).is_err());
        assert!(BumpFunction::entropy(2.0, 0.0).is_err());
    }

    #[test]
    fn summability_is_bounded_by_integral_test() {
        for delta in [0.1, 0.2, 0.5] {
            for p in [1.5, 2.0, 3.0] {
                let eps = BumpFunction::entropy(p, delta).unwrap();
                let cert = eps.summability(1000);
                // Σ_{n≥1} n^-(1+δ) ≤ 1 + 1/δ
                assert!(cert.partial_sum <= 1.0 + 1.0 / delta);
                assert!(cert.last_increment < 1e-3);
                let alpha = BumpFunction::direct(p, delta).unwrap();
                let cert = alpha.summability(1000);
                assert!(cert.partial_sum <= 2.0 * (1.0 + 1.0 / delta));
            }
        }
    }

    #[test]
    fn constants_for_unit_weights_are_one() {
        let m = WeightedModel::constant(3, 1.0).unwrap();
        for p in [1.5, 2.0, 3.0] {
            let pd = dual_exponent(p);
            let eps = BumpFunction::entropy(p, 0.2).unwrap();
            let eps_d = BumpFunction::entropy(pd, 0.2).unwrap();
            assert_eq!(entropy_bump_constant(&m, p, &eps, Direction::WSigma).unwrap().value, 1.0);
            assert_eq!(entropy_bump_constant(&m, p, &eps_d, Direction::SigmaW).unwrap().value, 1.0);
            let alpha = BumpFunction::direct(p, 0.2).unwrap();
            assert_eq!(direct_bump_constant(&m, p, &alpha, Direction::WSigma).unwrap().value, 1.0);
            assert_eq!(plain_ap(&m, p, Direction::WSigma).unwrap().value, 1.0);
        }
    }

    #[test]
    fn mismatched_bump_exponent_is_rejected() {
        let m = example();
        let eps = BumpFunction::entropy(2.0, 0.2).unwrap();
        assert!(matches!(entropy_bump_constant(&m, 3.0, &eps, Direction::WSigma), Err(Error::Config(_))));
        let eps = BumpFunction::entropy(3.0, 0.2).unwrap();
        assert!(entropy_bump_constant(&m, 3.0, &eps, Direction::SigmaW).is_err());
        let alpha = BumpFunction::direct(2.0, 0.2).unwrap();
        assert!(entropy_bump_constant(&m, 2.0, &alpha, Direction::WSigma).is_err());
    }

    #[test]
    fn restricted_ap_cases() {
        let m = example();
        assert!(matches!(restricted_ap(&m, 2.0, &[], Direction::WSigma), Err(Error::Domain(_))));
        let left = Cube { level: 1, index: 0 };
        assert_eq!(restricted_ap(&m, 2.0, &[left], Direction::WSigma).unwrap(), 3.0);
        let all: Vec<Cube> = all_cubes(1).collect();
        assert_eq!(restricted_ap(&m, 2.0, &all, Direction::WSigma).unwrap(), 3.0);
        assert_eq!(restricted_ap(&m, 2.0, &[Cube::ROOT], Direction::WSigma).unwrap(), 2.0);
    }

    #[test]
    fn testing_constant_examples() {
        let m = WeightedModel::constant(1, 1.0).unwrap();
        let f = SparseFamily::from_cubes(1, [Cube::ROOT, Cube { level: 1, index: 0 }]).unwrap();
        let (t1, t2) = testing_constants(&m, &f, 2.0).unwrap();
        assert_eq!(t1.value, 2.5);
        assert_eq!(t1.witness, Cube::ROOT);
        assert_eq!(t1.value, t2.value);

        let root = SparseFamily::from_cubes(1, [Cube::ROOT]).unwrap();
        for p in [1.5, 2.0, 4.0] {
            let (t1, t2) = testing_constants(&m, &root, p).unwrap();
            assert_eq!((t1.value, t2.value), (1.0, 1.0));
        }
        assert!(testing_constants(&m, &SparseFamily::empty(1), 2.0).is_err());
    }

    #[test]
    fn report_csv_and_json() {
        let m = example();
        let table = ap_table(&m, 2.0, Direction::WSigma);
        let report = ConstantReport::from_table(&table, true);
        assert_eq!(report.value, 3.0);
        assert_eq!(report.witness, Cube { level: 1, index: 0 });
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("level,index,value"));
        let json = serde_json::to_string(&report).unwrap();
        let back: ConstantReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }
}
