//! Finite dyadic model of `[0,1)`.
//!
//! A model of depth `L` has `2^L` finest cells of length `2^-L`. Weights are
//! stored as per-cell densities and every integral is a finite sum over cells.
//! Cube measures are precomputed bottom-up so that the measure of a cube is
//! exactly the floating-point sum of the measures of its two children.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the model depth.
pub const DEFAULT_MAX_DEPTH: u32 = 20;

/// A dyadic interval `[index * 2^-level, (index + 1) * 2^-level)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cube {
    pub level: u32,
    pub index: u64,
}

impl Cube {
    pub const ROOT: Cube = Cube { level: 0, index: 0 };

    pub fn new(level: u32, index: u64) -> Result<Self> {
        if level > 62 || index >= 1u64 << level {
            return Err(Error::IndexOutOfRange { level, index });
        }
        Ok(Cube { level, index })
    }

    /// Lebesgue measure `|Q| = 2^-level`.
    pub fn length(&self) -> f64 {
        pow2(-(self.level as i32))
    }

    pub fn left(&self) -> f64 {
        self.index as f64 * self.length()
    }

    pub fn right(&self) -> f64 {
        (self.index + 1) as f64 * self.length()
    }

    pub fn children(&self) -> (Cube, Cube) {
        let level = self.level + 1;
        (Cube { level, index: 2 * self.index }, Cube { level, index: 2 * self.index + 1 })
    }

    pub fn parent(&self) -> Option<Cube> {
        (self.level > 0).then(|| Cube { level: self.level - 1, index: self.index / 2 })
    }

    /// The ancestor of `self` at `level`, or `self` when the levels agree.
    pub fn ancestor_at(&self, level: u32) -> Option<Cube> {
        (level <= self.level).then(|| Cube { level, index: self.index >> (self.level - level) })
    }

    /// Non-strict containment `other ⊆ self`.
    pub fn contains(&self, other: &Cube) -> bool {
        other.ancestor_at(self.level) == Some(*self)
    }

    pub fn strictly_contains(&self, other: &Cube) -> bool {
        other.level > self.level && self.contains(other)
    }

    /// All descendants of `self` at `level` (empty when `level < self.level`).
    pub fn descendants_at(&self, level: u32) -> Vec<Cube> {
        if level < self.level {
            return Vec::new();
        }
        let shift = level - self.level;
        let start = self.index << shift;
        (start..start + (1u64 << shift)).map(|index| Cube { level, index }).collect()
    }

    /// Range of finest-cell indices covered by `self` in a model of `depth`.
    pub fn cells(&self, depth: u32) -> Range<usize> {
        debug_assert!(self.level <= depth);
        let shift = depth - self.level;
        let start = (self.index << shift) as usize;
        start..start + (1usize << shift)
    }

    /// The finest cell `cell` as a cube at `depth`.
    pub fn cell(depth: u32, cell: usize) -> Cube {
        Cube { level: depth, index: cell as u64 }
    }
}

impl fmt::Display for Cube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}) (level {}, index {})", self.left(), self.right(), self.level, self.index)
    }
}

/// Every cube of the lattice with level `0..=depth`, ordered by `(level, index)`.
pub fn all_cubes(depth: u32) -> impl Iterator<Item = Cube> {
    (0..=depth).flat_map(|level| (0..1u64 << level).map(move |index| Cube { level, index }))
}

/// Exact `2^k` for moderate `k`.
pub fn pow2(k: i32) -> f64 {
    f64::from_bits(((1023 + k) as u64) << 52)
}

/// Pairwise summation. On power-of-two slices this reproduces the dyadic tree
/// sums bit for bit.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

/// Per-level table of values indexed by cube, `levels[l][k]` for cube `(l, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeTable {
    levels: Vec<Vec<f64>>,
}

impl CubeTable {
    pub fn filled(depth: u32, value: f64) -> Self {
        CubeTable { levels: (0..=depth).map(|l| vec![value; 1usize << l]).collect() }
    }

    /// Bottom-up sums of `leaves` (length `2^depth`): entry `(l, k)` is the
    /// sum of the leaves inside that cube.
    pub fn sums_of(leaves: &[f64]) -> Self {
        debug_assert!(leaves.len().is_power_of_two());
        let depth = leaves.len().trailing_zeros();
        let mut levels = vec![Vec::new(); depth as usize + 1];
        levels[depth as usize] = leaves.to_vec();
        for l in (0..depth as usize).rev() {
            let below = &levels[l + 1];
            levels[l] = below.chunks_exact(2).map(|pair| pair[0] + pair[1]).collect();
        }
        CubeTable { levels }
    }

    pub fn depth(&self) -> u32 {
        (self.levels.len() - 1) as u32
    }

    pub fn get(&self, cube: Cube) -> f64 {
        self.levels[cube.level as usize][cube.index as usize]
    }

    pub fn set(&mut self, cube: Cube, value: f64) {
        self.levels[cube.level as usize][cube.index as usize] = value;
    }

    pub fn level(&self, level: u32) -> &[f64] {
        &self.levels[level as usize]
    }

    pub fn level_mut(&mut self, level: u32) -> &mut [f64] {
        &mut self.levels[level as usize]
    }

    /// Maximum entry together with the first cube (in `(level, index)` order)
    /// attaining it.
    pub fn argmax(&self) -> (Cube, f64) {
        let mut best = (Cube::ROOT, f64::NEG_INFINITY);
        for cube in all_cubes(self.depth()) {
            let v = self.get(cube);
            if v > best.1 {
                best = (cube, v);
            }
        }
        best
    }
}

/// Which measure an operation integrates against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    W,
    Sigma,
    Lebesgue,
}

/// A function represented by its value on each finest cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFunction {
    pub depth: u32,
    pub values: Vec<f64>,
}

impl CellFunction {
    pub fn new(depth: u32, values: Vec<f64>) -> Result<Self> {
        if values.len() != 1usize << depth {
            return Err(Error::InvalidModel(format!(
                "cell function of depth {depth} needs {} values, got {}",
                1usize << depth,
                values.len()
            )));
        }
        Ok(CellFunction { depth, values })
    }

    pub fn constant(depth: u32, value: f64) -> Self {
        CellFunction { depth, values: vec![value; 1usize << depth] }
    }

    pub fn indicator(depth: u32, cube: Cube) -> Self {
        let mut values = vec![0.0; 1usize << depth];
        values[cube.cells(depth)].fill(1.0);
        CellFunction { depth, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// On-disk representation of a model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub depth: u32,
    pub w: Vec<f64>,
    pub sigma: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<serde_json::Value>,
}

/// Lattice depth plus strictly positive cell densities for `w` and `σ`.
///
/// Immutable after construction.
#[derive(Debug, Clone)]
pub struct WeightedModel {
    depth: u32,
    w: Vec<f64>,
    sigma: Vec<f64>,
    w_measure: CubeTable,
    sigma_measure: CubeTable,
}

impl PartialEq for WeightedModel {
    fn eq(&self, other: &Self) -> bool {
        self.depth == other.depth && self.w == other.w && self.sigma == other.sigma
    }
}

impl WeightedModel {
    pub fn new(depth: u32, w: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        Self::with_max_depth(depth, w, sigma, DEFAULT_MAX_DEPTH)
    }

    pub fn with_max_depth(depth: u32, w: Vec<f64>, sigma: Vec<f64>, max_depth: u32) -> Result<Self> {
        if depth < 1 {
            return Err(Error::InvalidModel("depth must be at least 1".into()));
        }
        if depth > max_depth {
            return Err(Error::InvalidModel(format!("depth {depth} exceeds the maximum {max_depth}")));
        }
        let cells = 1usize << depth;
        for (name, density) in [("w", &w), ("sigma", &sigma)] {
            if density.len() != cells {
                return Err(Error::InvalidModel(format!(
                    "{name} has {} densities, depth {depth} needs {cells}",
                    density.len()
                )));
            }
            if let Some(i) = density.iter().position(|d| !(d.is_finite() && *d > 0.0)) {
                return Err(Error::InvalidModel(format!(
                    "{name} density at cell {i} is {}, densities must be finite and > 0",
                    density[i]
                )));
            }
        }
        let h = pow2(-(depth as i32));
        let w_measure = CubeTable::sums_of(&w.iter().map(|d| d * h).collect::<Vec<_>>());
        let sigma_measure = CubeTable::sums_of(&sigma.iter().map(|d| d * h).collect::<Vec<_>>());
        Ok(WeightedModel { depth, w, sigma, w_measure, sigma_measure })
    }

    /// Both weights identically equal to `c`.
    pub fn constant(depth: u32, c: f64) -> Result<Self> {
        let cells = 1usize << depth;
        Self::new(depth, vec![c; cells], vec![c; cells])
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn cells(&self) -> usize {
        1usize << self.depth
    }

    /// Length of a finest cell, `2^-depth`.
    pub fn cell_length(&self) -> f64 {
        pow2(-(self.depth as i32))
    }

    pub fn density(&self, which: Measure) -> Option<&[f64]> {
        match which {
            Measure::W => Some(&self.w),
            Measure::Sigma => Some(&self.sigma),
            Measure::Lebesgue => None,
        }
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// Cube measures for `w` or `σ` (Lebesgue has no table).
    pub fn measure_table(&self, which: Measure) -> Option<&CubeTable> {
        match which {
            Measure::W => Some(&self.w_measure),
            Measure::Sigma => Some(&self.sigma_measure),
            Measure::Lebesgue => None,
        }
    }

    pub fn check_cube(&self, cube: Cube) -> Result<()> {
        if cube.level > self.depth {
            return Err(Error::LevelOutOfRange { cube, depth: self.depth });
        }
        Ok(())
    }

    pub fn check_function(&self, f: &CellFunction) -> Result<()> {
        if f.depth != self.depth || f.values.len() != self.cells() {
            return Err(Error::DepthMismatch { expected: self.depth, actual: f.depth });
        }
        Ok(())
    }

    pub fn measure(&self, which: Measure, cube: Cube) -> Result<f64> {
        self.check_cube(cube)?;
        Ok(self.measure_unchecked(which, cube))
    }

    pub(crate) fn measure_unchecked(&self, which: Measure, cube: Cube) -> f64 {
        match which {
            Measure::W => self.w_measure.get(cube),
            Measure::Sigma => self.sigma_measure.get(cube),
            Measure::Lebesgue => cube.length(),
        }
    }

    /// `⟨μ⟩_Q = μ(Q) / |Q|`.
    pub fn average(&self, which: Measure, cube: Cube) -> Result<f64> {
        self.check_cube(cube)?;
        Ok(self.average_unchecked(which, cube))
    }

    pub(crate) fn average_unchecked(&self, which: Measure, cube: Cube) -> f64 {
        // dividing by |Q| is an exact power-of-two scaling
        self.measure_unchecked(which, cube) * pow2(cube.level as i32)
    }

    /// `|Q|^-1 ∫_Q f dμ` for `μ` one of the weights.
    pub fn weighted_average(&self, f: &CellFunction, which: Measure, cube: Cube) -> Result<f64> {
        self.check_cube(cube)?;
        self.check_function(f)?;
        let h = self.cell_length();
        let range = cube.cells(self.depth);
        let terms: Vec<f64> = match self.density(which) {
            Some(d) => range.map(|c| f.values[c] * d[c] * h).collect(),
            None => range.map(|c| f.values[c] * h).collect(),
        };
        Ok(pairwise_sum(&terms) * pow2(cube.level as i32))
    }

    /// `∫ |f|^p dμ` over the whole interval.
    pub fn lp_norm_pow(&self, f: &CellFunction, which: Measure, p: f64) -> f64 {
        let h = self.cell_length();
        let terms: Vec<f64> = match self.density(which) {
            Some(d) => f.values.iter().zip(d).map(|(v, d)| v.abs().powf(p) * d * h).collect(),
            None => f.values.iter().map(|v| v.abs().powf(p) * h).collect(),
        };
        pairwise_sum(&terms)
    }

    pub fn lp_norm(&self, f: &CellFunction, which: Measure, p: f64) -> f64 {
        self.lp_norm_pow(f, which, p).powf(1.0 / p)
    }

    /// The same model with the roles of `w` and `σ` exchanged.
    pub fn swapped(&self) -> Self {
        WeightedModel {
            depth: self.depth,
            w: self.sigma.clone(),
            sigma: self.w.clone(),
            w_measure: self.sigma_measure.clone(),
            sigma_measure: self.w_measure.clone(),
        }
    }

    /// `w` multiplied by `c > 0`.
    pub fn scale_w(&self, c: f64) -> Result<Self> {
        Self::new(self.depth, self.w.iter().map(|d| d * c).collect(), self.sigma.clone())
    }

    /// The same weights on a lattice one level deeper (each cell split in two).
    pub fn refined(&self) -> Result<Self> {
        let split = |d: &[f64]| d.iter().flat_map(|&x| [x, x]).collect::<Vec<_>>();
        Self::with_max_depth(self.depth + 1, split(&self.w), split(&self.sigma), self.depth + 1)
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile { depth: self.depth, w: self.w.clone(), sigma: self.sigma.clone(), meta: None }
    }

    pub fn from_file(file: ModelFile, max_depth: u32) -> Result<Self> {
        Self::with_max_depth(file.depth, file.w, file.sigma, max_depth)
    }

    pub fn from_json(json: &str, max_depth: u32) -> Result<Self> {
        Self::from_file(serde_json::from_str(json)?, max_depth)
    }
}
