//! Numerical checks of the two-weight inequalities for sparse operators.
//!
//! Every `≲` is turned into an explicit constant. Dyadic bands `≃ 2^r` are
//! the half-open intervals `[2^r, 2^(r+1))`.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    direct_bump_constant, dual_exponent, entropy_bump_constant, entropy_table, plain_ap, restricted_ap,
    testing_constants, BumpFunction, Direction,
};
use crate::error::{Error, Result};
use crate::lattice::{pairwise_sum, pow2, Cube, CubeTable, Measure, WeightedModel};
use crate::operator::{estimate_dual_norm, estimate_norm, NormOptions};
use crate::sparse::{maximal_cubes, verify_sparse, SparseFamily};

/// Slack for inequalities that hold exactly in real arithmetic.
pub const ARITHMETIC_SLACK: f64 = 1e-12;
/// Absolute slack for the reverse testing bounds.
pub const REVERSE_TESTING_SLACK: f64 = 1e-9;
/// Relative tolerance for primal/dual agreement.
pub const DUALITY_TOLERANCE: f64 = 1e-5;
/// `2 · 2`: two-sided expansion times the packing constant of ½-sparse families.
pub const HYTONEN_P2_BOUND: f64 = 4.0;
/// `2 · 2`: `|E_Q| ≥ ½|Q|` times the band width.
pub const STOPPING_BOUND: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inequality {
    Sawyer,
    Hytonen,
    NestedExpansion,
    StoppingEstimate,
    Theorem1,
    Theorem2,
    PlainAp,
}

impl Inequality {
    pub fn name(self) -> &'static str {
        match self {
            Inequality::Sawyer => "sawyer",
            Inequality::Hytonen => "hytonen",
            Inequality::NestedExpansion => "nested_expansion",
            Inequality::StoppingEstimate => "stopping_estimate",
            Inequality::Theorem1 => "theorem1",
            Inequality::Theorem2 => "theorem2",
            Inequality::PlainAp => "plain_ap",
        }
    }

    pub const ALL: [Inequality; 7] = [
        Inequality::Sawyer,
        Inequality::Hytonen,
        Inequality::NestedExpansion,
        Inequality::StoppingEstimate,
        Inequality::Theorem1,
        Inequality::Theorem2,
        Inequality::PlainAp,
    ];
}

impl std::str::FromStr for Inequality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Inequality::ALL
            .into_iter()
            .find(|i| i.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown inequality {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportParams {
    pub p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub depth: u32,
}

/// Where an extremal value was found.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Witness {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cube: Option<Cube>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<i32>,
}

/// Both sides of one inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub name: Inequality,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub params: ReportParams,
    pub witness: Witness,
    /// Asserted upper bound on the ratio, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    /// Whether every assertion attached to this report held.
    pub holds: bool,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, f64>,
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if rhs > 0.0 {
        lhs / rhs
    } else if lhs == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

impl VerificationReport {
    fn new(name: Inequality, lhs: f64, rhs: f64, params: ReportParams) -> Self {
        VerificationReport {
            name,
            lhs,
            rhs,
            ratio: ratio(lhs, rhs),
            params,
            witness: Witness::default(),
            bound: None,
            holds: true,
            details: BTreeMap::new(),
        }
    }

    fn with_bound(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self.holds &= self.ratio <= bound * (1.0 + ARITHMETIC_SLACK);
        self
    }

    fn detail(mut self, key: &str, value: f64) -> Self {
        self.details.insert(key.to_string(), value);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.params.seed = Some(seed);
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.params.delta = Some(delta);
        self
    }

    /// Keeps the report with the larger ratio; `holds` becomes the conjunction.
    pub fn worst_of(self, other: Self) -> Self {
        let holds = self.holds && other.holds;
        let mut out = if other.ratio > self.ratio { other } else { self };
        out.holds = holds;
        out
    }
}

pub fn write_jsonl<W: Write>(reports: &[VerificationReport], mut writer: W) -> Result<()> {
    for r in reports {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// `floor(log₂ x)` read off the exponent bits (exact for positive normal `x`).
pub fn dyadic_band(x: f64) -> i32 {
    debug_assert!(x.is_normal() && x > 0.0);
    ((x.to_bits() >> 52) & 0x7ff) as i32 - 1023
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LevelSetMode {
    /// Bands of `ρ_σ(Q)`.
    Entropy,
    /// Bands of `⟨σ⟩_Q`.
    Average,
}

/// Members of the family inside `P` whose band value lies in `[2^r, 2^(r+1))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSet {
    pub mode: LevelSetMode,
    pub r: i32,
    pub cubes: Vec<Cube>,
    /// Maximal members of `cubes`.
    pub maximal: Vec<Cube>,
}

fn check_instance(model: &WeightedModel, family: &SparseFamily) -> Result<()> {
    if family.depth() != model.depth() {
        return Err(Error::DepthMismatch { expected: model.depth(), actual: family.depth() });
    }
    let report = verify_sparse(family);
    if !report.ok {
        return Err(Error::NotSparse { worst: report.worst.unwrap_or(Cube::ROOT), fraction: report.worst_fraction });
    }
    Ok(())
}

/// Partition of `{Q ∈ family : Q ⊆ P}` into dyadic bands.
pub fn levelset_decompose(
    model: &WeightedModel,
    family: &SparseFamily,
    p_cube: Cube,
    mode: LevelSetMode,
) -> Result<Vec<LevelSet>> {
    check_instance(model, family)?;
    let rho = match mode {
        LevelSetMode::Entropy => Some(entropy_table(model, Measure::Sigma)?),
        LevelSetMode::Average => None,
    };
    levelsets_with(model, family, p_cube, mode, rho.as_ref())
}

fn levelsets_with(
    model: &WeightedModel,
    family: &SparseFamily,
    p_cube: Cube,
    mode: LevelSetMode,
    rho: Option<&CubeTable>,
) -> Result<Vec<LevelSet>> {
    if !family.contains(&p_cube) {
        return Err(Error::Domain(format!("{p_cube} is not a member of the family")));
    }
    let mut bands: BTreeMap<i32, Vec<Cube>> = BTreeMap::new();
    for q in family.members_within(p_cube) {
        let value = match mode {
            LevelSetMode::Entropy => rho.expect("entropy table supplied").get(q),
            LevelSetMode::Average => model.average_unchecked(Measure::Sigma, q),
        };
        bands.entry(dyadic_band(value)).or_default().push(q);
    }
    Ok(bands
        .into_iter()
        .map(|(r, cubes)| {
            let maximal = maximal_cubes(&cubes);
            LevelSet { mode, r, cubes, maximal }
        })
        .collect())
}

/// `(Σ_{Q∈𝒬_r} σ(Q)) / (2^(r+1) Σ_{Q*∈𝒬_r*} σ(Q*))`, asserted `≤ 4`.
pub fn verify_stopping_estimate(model: &WeightedModel, levelset: &LevelSet) -> Result<VerificationReport> {
    if levelset.mode != LevelSetMode::Entropy {
        return Err(Error::Domain("the stopping estimate needs an entropy level set".into()));
    }
    let sigma = |q: &Cube| model.measure(Measure::Sigma, *q);
    let lhs: f64 = levelset.cubes.iter().map(sigma).sum::<Result<f64>>()?;
    let tops: f64 = levelset.maximal.iter().map(sigma).sum::<Result<f64>>()?;
    let rhs = pow2(levelset.r + 1) * tops;
    let mut report = VerificationReport::new(
        Inequality::StoppingEstimate,
        lhs,
        rhs,
        ReportParams { depth: model.depth(), ..Default::default() },
    )
    .with_bound(STOPPING_BOUND);
    report.witness.band = Some(levelset.r);
    Ok(report)
}

/// `∫_P (Σ_{Q ∈ cubes} a_Q 1_Q)^p w` for cubes inside `P`.
fn stack_integral(
    model: &WeightedModel,
    cubes: &[Cube],
    p_cube: Cube,
    p: f64,
    averaged: Measure,
    integrated: Measure,
) -> f64 {
    let depth = model.depth();
    let range = p_cube.cells(depth);
    let offset = range.start;
    let mut stack = vec![0.0; range.len()];
    for q in cubes {
        let a = model.average_unchecked(averaged, *q);
        for c in q.cells(depth) {
            stack[c - offset] += a;
        }
    }
    let density = model.density(integrated).expect("weight");
    let h = model.cell_length();
    let terms: Vec<f64> = stack.iter().enumerate().map(|(i, s)| s.powf(p) * density[offset + i] * h).collect();
    pairwise_sum(&terms)
}

/// `∫_P (Σ_{Q∈𝒬, Q⊆P} ⟨σ⟩_Q 1_Q)^p w` against `[w,σ]^𝒬_p Σ_{Q∈𝒬, Q⊆P} σ(Q)`.
/// At `p = 2` the ratio is asserted `≤ 4` (valid for ½-sparse collections).
pub fn verify_hytonen(model: &WeightedModel, collection: &[Cube], p_cube: Cube, p: f64) -> Result<VerificationReport> {
    crate::analysis::check_exponent(p)?;
    model.check_cube(p_cube)?;
    let inside: Vec<Cube> = collection.iter().copied().filter(|q| p_cube.contains(q)).collect();
    if inside.is_empty() {
        return Err(Error::Domain(format!("no cube of the collection lies inside {p_cube}")));
    }
    for q in &inside {
        model.check_cube(*q)?;
    }
    let lhs = stack_integral(model, &inside, p_cube, p, Measure::Sigma, Measure::W);
    let ap = restricted_ap(model, p, &inside, Direction::WSigma)?;
    let packing: f64 = inside.iter().map(|q| model.measure_unchecked(Measure::Sigma, *q)).sum();
    let report = VerificationReport::new(
        Inequality::Hytonen,
        lhs,
        ap * packing,
        ReportParams { p, depth: model.depth(), ..Default::default() },
    )
    .detail("restricted_ap", ap)
    .detail("packing_sum", packing);
    let mut report = if p == 2.0 { report.with_bound(HYTONEN_P2_BOUND) } else { report };
    report.witness.cube = Some(p_cube);
    Ok(report)
}

/// Square `∫_P (Σ a_Q 1_Q)² w` against the nested double sum
/// `Σ_Q a_Q Σ_{Q'⊆Q} a_Q' w(Q')` over the level set; asserts
/// `double ≤ square ≤ 2·double`.
pub fn verify_nested_expansion(model: &WeightedModel, levelset: &LevelSet, p_cube: Cube) -> Result<VerificationReport> {
    model.check_cube(p_cube)?;
    let cubes: Vec<Cube> = levelset.cubes.iter().copied().filter(|q| p_cube.contains(q)).collect();
    let square = stack_integral(model, &cubes, p_cube, 2.0, Measure::Sigma, Measure::W);
    let avg: HashMap<Cube, f64> = cubes.iter().map(|q| (*q, model.average_unchecked(Measure::Sigma, *q))).collect();
    let mut double = 0.0;
    for q in &cubes {
        // Σ of a_Q over members of the set containing q (q included)
        let mut chain = 0.0;
        let mut cur = Some(*q);
        while let Some(c) = cur {
            chain += avg.get(&c).copied().unwrap_or(0.0);
            cur = c.parent();
        }
        double += avg[q] * model.measure_unchecked(Measure::W, *q) * chain;
    }
    let mut report = VerificationReport::new(
        Inequality::NestedExpansion,
        square,
        double,
        ReportParams { p: 2.0, depth: model.depth(), ..Default::default() },
    )
    .with_bound(2.0);
    report.holds &= double <= square * (1.0 + ARITHMETIC_SLACK);
    report.witness = Witness { cube: Some(p_cube), band: Some(levelset.r) };
    Ok(report)
}

/// The norm against `T1^(1/p) + T2^(1/p')`, with the reverse bounds
/// `T1^(1/p) ≤ ‖T‖`, `T2^(1/p') ≤ ‖T*‖` and primal/dual agreement asserted.
pub fn verify_sawyer(
    model: &WeightedModel,
    family: &SparseFamily,
    p: f64,
    opts: &NormOptions,
) -> Result<VerificationReport> {
    let norm = estimate_norm(model, family, p, opts)?.value;
    let dual = estimate_dual_norm(model, family, p, opts)?.value;
    sawyer_with_norms(model, family, p, norm, dual)
}

pub fn sawyer_with_norms(
    model: &WeightedModel,
    family: &SparseFamily,
    p: f64,
    norm: f64,
    dual: f64,
) -> Result<VerificationReport> {
    let (t1, t2) = testing_constants(model, family, p)?;
    let pd = dual_exponent(p);
    let t1_root = t1.value.powf(1.0 / p);
    let t2_root = t2.value.powf(1.0 / pd);
    let mut report = VerificationReport::new(
        Inequality::Sawyer,
        norm,
        t1_root + t2_root,
        ReportParams { p, depth: model.depth(), ..Default::default() },
    )
    .detail("norm", norm)
    .detail("dual_norm", dual)
    .detail("t1", t1.value)
    .detail("t2", t2.value)
    .detail("t1_root", t1_root)
    .detail("t2_root", t2_root);
    let reverse_primal = t1_root <= norm + REVERSE_TESTING_SLACK;
    let reverse_dual = t2_root <= dual + REVERSE_TESTING_SLACK;
    let duality = (dual - norm).abs() <= DUALITY_TOLERANCE * norm.max(f64::MIN_POSITIVE);
    report.holds = reverse_primal && reverse_dual && duality;
    report.witness.cube = Some(t1.witness);
    Ok(report)
}

/// `[w,σ]_{p,ε_p}^(1/p) + [σ,w]_{p',ε_p'}^(1/p')` with the default entropy bumps.
pub fn verify_theorem1(
    model: &WeightedModel,
    family: &SparseFamily,
    p: f64,
    delta: f64,
    opts: &NormOptions,
) -> Result<VerificationReport> {
    let norm = estimate_norm(model, family, p, opts)?.value;
    theorem1_with_norm(model, family, p, delta, norm)
}

pub fn theorem1_with_norm(
    model: &WeightedModel,
    family: &SparseFamily,
    p: f64,
    delta: f64,
    norm: f64,
) -> Result<VerificationReport> {
    let pd = dual_exponent(p);
    let ws = entropy_bump_constant(model, p, &BumpFunction::entropy(p, delta)?, Direction::WSigma)?;
    let sw = entropy_bump_constant(model, p, &BumpFunction::entropy(pd, delta)?, Direction::SigmaW)?;
    bump_report(Inequality::Theorem1, model, family, p, delta, norm, ws.value, sw.value, ws.witness)
}

/// `[[w,σ]]_{p,α_p}^(1/p) + [[σ,w]]_{p',α_p'}^(1/p')` with the default direct bumps.
pub fn verify_theorem2(
    model: &WeightedModel,
    family: &SparseFamily,
    p: f64,
    delta: f64,
    opts: &NormOptions,
) -> Result<VerificationReport> {
    let norm = estimate_norm(model, family, p, opts)?.value;
    theorem2_with_norm(model, family, p, delta, norm)
}

pub fn theorem2_with_norm(
    model: &WeightedModel,
    family: &SparseFamily,
    p: f64,
    delta: f64,
    norm: f64,
) -> Result<VerificationReport> {
    let pd = dual_exponent(p);
    let ws = direct_bump_constant(model, p, &BumpFunction::direct(p, delta)?, Direction::WSigma)?;
    let sw = direct_bump_constant(model, p, &BumpFunction::direct(pd, delta)?, Direction::SigmaW)?;
    bump_report(Inequality::Theorem2, model, family, p, delta, norm, ws.value, sw.value, ws.witness)
}

#[allow(clippy::too_many_arguments)]
fn bump_report(
    name: Inequality,
    model: &WeightedModel,
    family: &SparseFamily,
    p: f64,
    delta: f64,
    norm: f64,
    ws: f64,
    sw: f64,
    witness: Cube,
) -> Result<VerificationReport> {
    if family.depth() != model.depth() {
        return Err(Error::DepthMismatch { expected: model.depth(), actual: family.depth() });
    }
    let pd = dual_exponent(p);
    let ap_ws = plain_ap(model, p, Direction::WSigma)?.value;
    let ap_sw = plain_ap(model, p, Direction::SigmaW)?.value;
    let mut report = VerificationReport::new(
        name,
        norm,
        ws.powf(1.0 / p) + sw.powf(1.0 / pd),
        ReportParams { p, delta: Some(delta), depth: model.depth(), ..Default::default() },
    )
    .detail("bump_w_sigma", ws)
    .detail("bump_sigma_w", sw)
    .detail("ap_w_sigma", ap_ws)
    .detail("ap_sigma_w", ap_sw);
    report.witness.cube = Some(witness);
    Ok(report)
}

/// The same ratio with the bump removed: `[w,σ]_p^(1/p) + [σ,w]_p'^(1/p')`.
pub fn plain_ap_with_norm(model: &WeightedModel, p: f64, norm: f64) -> Result<VerificationReport> {
    let pd = dual_exponent(p);
    let ws = plain_ap(model, p, Direction::WSigma)?;
    let sw = plain_ap(model, p, Direction::SigmaW)?;
    let mut report = VerificationReport::new(
        Inequality::PlainAp,
        norm,
        ws.value.powf(1.0 / p) + sw.value.powf(1.0 / pd),
        ReportParams { p, depth: model.depth(), ..Default::default() },
    )
    .detail("ap_w_sigma", ws.value)
    .detail("ap_sigma_w", sw.value);
    report.witness.cube = Some(ws.witness);
    Ok(report)
}

/// Per-band contribution to the first testing condition at `P`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandProfile {
    pub r: i32,
    pub cubes: usize,
    /// `∫_P (Σ_{Q∈𝒬_r} ⟨σ⟩_Q 1_Q)^p w`.
    pub testing_integral: f64,
    pub hytonen_ratio: f64,
}

/// Band-by-band view of `∫_P (Σ_{Q⊆P} ⟨σ⟩_Q 1_Q)^p w`, exposing the
/// reduction to a single band empirically.
pub fn band_profile(
    model: &WeightedModel,
    family: &SparseFamily,
    p_cube: Cube,
    p: f64,
    mode: LevelSetMode,
) -> Result<Vec<BandProfile>> {
    levelset_decompose(model, family, p_cube, mode)?
        .into_iter()
        .map(|band| {
            let hyt = verify_hytonen(model, &band.cubes, p_cube, p)?;
            Ok(BandProfile { r: band.r, cubes: band.cubes.len(), testing_integral: hyt.lhs, hytonen_ratio: hyt.ratio })
        })
        .collect()
}

/// All structural checks at every member `P` of the family, reduced to the
/// worst report per inequality: Hytönen over the family and over each
/// entropy band, the nested expansion and the stopping estimate on each
/// entropy band.
pub fn structural_reports(model: &WeightedModel, family: &SparseFamily, p: f64) -> Result<Vec<VerificationReport>> {
    check_instance(model, family)?;
    let rho = entropy_table(model, Measure::Sigma)?;
    let mut hytonen: Option<VerificationReport> = None;
    let mut nested: Option<VerificationReport> = None;
    let mut stopping: Option<VerificationReport> = None;
    let merge = |slot: &mut Option<VerificationReport>, r: VerificationReport| {
        *slot = Some(match slot.take() {
            Some(prev) => prev.worst_of(r),
            None => r,
        });
    };
    for &pc in family.cubes() {
        merge(&mut hytonen, verify_hytonen(model, family.cubes(), pc, p)?);
        for band in levelsets_with(model, family, pc, LevelSetMode::Entropy, Some(&rho))? {
            let mut h = verify_hytonen(model, &band.cubes, pc, p)?;
            h.witness.band = Some(band.r);
            merge(&mut hytonen, h);
            merge(&mut nested, verify_nested_expansion(model, &band, pc)?);
            merge(&mut stopping, verify_stopping_estimate(model, &band)?);
        }
    }
    Ok([hytonen, nested, stopping].into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::AscentOptions;

    fn cube(level: u32, index: u64) -> Cube {
        Cube { level, index }
    }

    fn two_cube_family() -> SparseFamily {
        SparseFamily::from_cubes(1, [Cube::ROOT, cube(1, 0)]).unwrap()
    }

    #[test]
    fn bands_from_exponent_bits() {
        assert_eq!(dyadic_band(1.0), 0);
        assert_eq!(dyadic_band(1.999), 0);
        assert_eq!(dyadic_band(2.0), 1);
        assert_eq!(dyadic_band(0.5), -1);
        assert_eq!(dyadic_band(0.75), -1);
        assert_eq!(dyadic_band(0.4999), -2);
    }

    #[test]
    fn levelset_examples() {
        let flat = WeightedModel::constant(3, 2.0).unwrap();
        let fam = SparseFamily::cascade(3);
        let sets = levelset_decompose(&flat, &fam, Cube::ROOT, LevelSetMode::Entropy).unwrap();
        assert_eq!(sets.len(), 1);
        assert_eq!(sets[0].r, 0);
        assert_eq!(sets[0].cubes.len(), 4);
        assert_eq!(sets[0].maximal, vec![Cube::ROOT]);

        let m = WeightedModel::new(1, vec![1.0, 1.0], vec![3.0, 1.0]).unwrap();
        let sets = levelset_decompose(&m, &two_cube_family(), Cube::ROOT, LevelSetMode::Entropy).unwrap();
        assert_eq!(sets.len(), 1);
        assert_eq!(sets[0].cubes, vec![Cube::ROOT, cube(1, 0)]);

        let sets = levelset_decompose(&m, &two_cube_family(), Cube::ROOT, LevelSetMode::Average).unwrap();
        // ⟨σ⟩ = 2 on the root, 3 on the left half: both in band 1
        assert_eq!(sets.len(), 1);
        assert_eq!(sets[0].r, 1);

        assert!(levelset_decompose(&m, &two_cube_family(), cube(1, 1), LevelSetMode::Entropy).is_err());
    }

    #[test]
    fn stopping_single_cube() {
        let m = WeightedModel::new(1, vec![1.0, 1.0], vec![3.0, 1.0]).unwrap();
        let root = SparseFamily::from_cubes(1, [Cube::ROOT]).unwrap();
        let sets = levelset_decompose(&m, &root, Cube::ROOT, LevelSetMode::Entropy).unwrap();
        let rep = verify_stopping_estimate(&m, &sets[0]).unwrap();
        assert_eq!(rep.lhs, 2.0);
        assert_eq!(rep.rhs, 4.0);
        assert!(rep.holds);
        let avg = levelset_decompose(&m, &root, Cube::ROOT, LevelSetMode::Average).unwrap();
        assert!(verify_stopping_estimate(&m, &avg[0]).is_err());
    }

    #[test]
    fn stopping_cascade() {
        let m = WeightedModel::constant(8, 1.0).unwrap();
        let fam = SparseFamily::cascade(8);
        let sets = levelset_decompose(&m, &fam, Cube::ROOT, LevelSetMode::Entropy).unwrap();
        let rep = verify_stopping_estimate(&m, &sets[0]).unwrap();
        // Σ 2^-k for k = 0..=8 against 2 · σ(root)
        assert_eq!(rep.lhs, 2.0 - pow2(-8));
        assert_eq!(rep.rhs, 2.0);
        assert!(rep.ratio <= 2.0 && rep.holds);
    }

    #[test]
    fn hytonen_examples() {
        let m = WeightedModel::constant(1, 1.0).unwrap();
        let rep = verify_hytonen(&m, &[Cube::ROOT], Cube::ROOT, 2.0).unwrap();
        assert_eq!((rep.lhs, rep.rhs, rep.ratio), (1.0, 1.0, 1.0));
        let rep = verify_hytonen(&m, two_cube_family().cubes(), Cube::ROOT, 2.0).unwrap();
        assert_eq!(rep.lhs, 2.5);
        assert_eq!(rep.rhs, 1.5);
        assert!((rep.ratio - 5.0 / 3.0).abs() < 1e-15);
        assert!(rep.holds);
        assert!(matches!(verify_hytonen(&m, &[cube(1, 1)], cube(1, 0), 2.0), Err(Error::Domain(_))));
        let rep = verify_hytonen(&m, &[Cube::ROOT], Cube::ROOT, 3.0).unwrap();
        assert_eq!(rep.bound, None);
    }

    #[test]
    fn nested_examples() {
        let m = WeightedModel::constant(1, 1.0).unwrap();
        let single = LevelSet { mode: LevelSetMode::Entropy, r: 0, cubes: vec![Cube::ROOT], maximal: vec![Cube::ROOT] };
        let rep = verify_nested_expansion(&m, &single, Cube::ROOT).unwrap();
        assert_eq!(rep.lhs, rep.rhs);
        assert!(rep.holds);

        let chain = LevelSet {
            mode: LevelSetMode::Entropy,
            r: 0,
            cubes: vec![Cube::ROOT, cube(1, 0)],
            maximal: vec![Cube::ROOT],
        };
        let rep = verify_nested_expansion(&m, &chain, Cube::ROOT).unwrap();
        // ∫(1 + 1_[0,½))² = 2.5; 1·(1·1 + 1·½) + 1·1·½ = 2
        assert_eq!(rep.lhs, 2.5);
        assert_eq!(rep.rhs, 2.0);
        assert!(rep.holds);
    }

    #[test]
    fn sawyer_examples() {
        let m = WeightedModel::constant(1, 1.0).unwrap();
        let opts = NormOptions::default();
        let root = SparseFamily::from_cubes(1, [Cube::ROOT]).unwrap();
        let rep = verify_sawyer(&m, &root, 2.0, &opts).unwrap();
        assert!((rep.ratio - 0.5).abs() < 1e-12);
        assert!(rep.holds);

        let rep = verify_sawyer(&m, &two_cube_family(), 2.0, &opts).unwrap();
        let norm = ((3.0 + 2.0 * 2f64.sqrt()) / 2.0).sqrt();
        assert!((rep.lhs - norm).abs() < 1e-12);
        assert!((rep.rhs - 2.0 * 2.5f64.sqrt()).abs() < 1e-12);
        assert!((rep.ratio - norm / (2.0 * 2.5f64.sqrt())).abs() < 1e-12);
        assert!((rep.ratio - 0.5399).abs() < 1e-4);
    }

    #[test]
    fn theorem_rank_one() {
        let m = WeightedModel::constant(2, 1.0).unwrap();
        let root = SparseFamily::from_cubes(2, [Cube::ROOT]).unwrap();
        let opts = NormOptions::default();
        for delta in [0.1, 0.2, 0.5] {
            let t1 = verify_theorem1(&m, &root, 2.0, delta, &opts).unwrap();
            assert!((t1.ratio - 0.5).abs() < 1e-12);
            let t2 = verify_theorem2(&m, &root, 2.0, delta, &opts).unwrap();
            assert!((t2.ratio - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn theorem1_ratio_nonincreasing_in_delta() {
        let m = WeightedModel::new(2, vec![1.0, 4.0, 0.5, 2.0], vec![3.0, 0.25, 1.0, 8.0]).unwrap();
        let fam = SparseFamily::from_cubes(2, [Cube::ROOT, cube(1, 1), cube(2, 0)]).unwrap();
        let norm = crate::operator::norm_general(&m, &fam, 3.0, &AscentOptions::default()).unwrap().value;
        let ratios: Vec<f64> =
            [0.1, 0.2, 0.5].iter().map(|d| theorem1_with_norm(&m, &fam, 3.0, *d, norm).unwrap().ratio).collect();
        assert!(ratios.windows(2).all(|w| w[1] <= w[0]), "{ratios:?}");
    }

    #[test]
    fn structural_reports_hold_on_cascade() {
        let m = crate::weights::generate_model(6, 1, crate::weights::WeightLaw::default()).unwrap();
        let fam = SparseFamily::cascade(6);
        let reps = structural_reports(&m, &fam, 2.0).unwrap();
        assert_eq!(reps.len(), 3);
        assert!(reps.iter().all(|r| r.holds), "{reps:#?}");
    }

    #[test]
    fn band_profile_covers_family() {
        let m = crate::weights::generate_model(5, 9, crate::weights::WeightLaw::default()).unwrap();
        let fam = crate::sparse::generate_sparse(5, 9, Default::default());
        let prof = band_profile(&m, &fam, Cube::ROOT, 2.0, LevelSetMode::Average).unwrap();
        assert_eq!(prof.iter().map(|b| b.cubes).sum::<usize>(), fam.len());
    }

    #[test]
    fn jsonl_lines() {
        let m = WeightedModel::constant(1, 1.0).unwrap();
        let rep = verify_hytonen(&m, &[Cube::ROOT], Cube::ROOT, 2.0).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&[rep.clone(), rep], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        let back: VerificationReport = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(back.name, Inequality::Hytonen);
    }
}
