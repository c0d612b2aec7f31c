//! Sparse families of dyadic cubes, their exceptional sets and packing sums.
//!
//! A family is ½-sparse when, for every member `P`, the members strictly
//! inside `P` cover at most half of `P`. Coverage is counted in whole finest
//! cells, so the check is exact integer arithmetic.

use std::collections::BTreeMap;
use std::ops::Range;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Cube;

/// How "inside P" is read in a containment condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Containment {
    /// `Q ⊊ P`; the default for the union condition.
    #[default]
    Strict,
    /// `Q ⊆ P`; the default for the packing sum.
    NonStrict,
}

impl Containment {
    pub fn holds(self, outer: &Cube, inner: &Cube) -> bool {
        match self {
            Containment::Strict => outer.strictly_contains(inner),
            Containment::NonStrict => outer.contains(inner),
        }
    }
}

/// A set of cubes inside a lattice of fixed depth.
///
/// The type does not enforce sparseness itself; [`verify_sparse`] checks it and
/// the loaders and generators only produce families that pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseFamily {
    depth: u32,
    cubes: Vec<Cube>,
    member: Vec<Vec<bool>>,
}

impl SparseFamily {
    pub fn from_cubes(depth: u32, cubes: impl IntoIterator<Item = Cube>) -> Result<Self> {
        let mut member: Vec<Vec<bool>> = (0..=depth).map(|l| vec![false; 1usize << l]).collect();
        for q in cubes {
            if q.level > depth {
                return Err(Error::LevelOutOfRange { cube: q, depth });
            }
            if q.index >= 1u64 << q.level {
                return Err(Error::IndexOutOfRange { level: q.level, index: q.index });
            }
            member[q.level as usize][q.index as usize] = true;
        }
        let cubes = collect_members(&member);
        Ok(SparseFamily { depth, cubes, member })
    }

    pub fn empty(depth: u32) -> Self {
        Self::from_cubes(depth, []).expect("empty family is valid")
    }

    /// The nested chain `[0,1) ⊃ [0,½) ⊃ [0,¼) ⊃ …` down to `depth`.
    pub fn cascade(depth: u32) -> Self {
        Self::from_cubes(depth, (0..=depth).map(|level| Cube { level, index: 0 })).expect("cascade cubes are in range")
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Members ordered by `(level, index)`.
    pub fn cubes(&self) -> &[Cube] {
        &self.cubes
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn contains(&self, cube: &Cube) -> bool {
        cube.level <= self.depth && self.member[cube.level as usize][cube.index as usize]
    }

    /// Members `Q` with `Q ⊆ P`.
    pub fn members_within(&self, p: Cube) -> impl Iterator<Item = Cube> + '_ {
        self.cubes.iter().copied().filter(move |q| p.contains(q))
    }

    /// The same cubes seen in a deeper lattice.
    pub fn with_depth(&self, depth: u32) -> Result<Self> {
        Self::from_cubes(depth, self.cubes.iter().copied())
    }

    /// The family with `cube` added if absent or removed if present.
    pub fn toggled(&self, cube: Cube) -> Result<Self> {
        if self.contains(&cube) {
            Self::from_cubes(self.depth, self.cubes.iter().copied().filter(|q| *q != cube))
        } else {
            Self::from_cubes(self.depth, self.cubes.iter().copied().chain([cube]))
        }
    }

    /// The nearest member strictly containing `cube`.
    pub fn parent_member(&self, cube: Cube) -> Option<Cube> {
        let mut cur = cube.parent();
        while let Some(q) = cur {
            if self.contains(&q) {
                return Some(q);
            }
            cur = q.parent();
        }
        None
    }

    /// Maximal members strictly inside each member, keyed by the outer member.
    pub fn maximal_children(&self) -> BTreeMap<Cube, Vec<Cube>> {
        let mut map: BTreeMap<Cube, Vec<Cube>> = self.cubes.iter().map(|q| (*q, Vec::new())).collect();
        for q in &self.cubes {
            if let Some(parent) = self.parent_member(*q) {
                map.get_mut(&parent).expect("parent is a member").push(*q);
            }
        }
        for children in map.values_mut() {
            children.sort_by_key(|c| (c.index << (62 - c.level), c.level));
        }
        map
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.cubes)?)
    }

    /// Loads a JSON list of `{"level", "index"}` and re-verifies sparseness.
    pub fn from_json(json: &str, depth: u32) -> Result<Self> {
        let cubes: Vec<Cube> = serde_json::from_str(json)?;
        let family = Self::from_cubes(depth, cubes)?;
        let report = verify_sparse(&family);
        if !report.ok {
            return Err(Error::NotSparse {
                worst: report.worst.unwrap_or(Cube::ROOT),
                fraction: report.worst_fraction,
            });
        }
        Ok(family)
    }
}

fn collect_members(member: &[Vec<bool>]) -> Vec<Cube> {
    member
        .iter()
        .enumerate()
        .flat_map(|(level, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, m)| **m)
                .map(move |(index, _)| Cube { level: level as u32, index: index as u64 })
        })
        .collect()
}

/// Outcome of the ½-sparseness check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseReport {
    pub ok: bool,
    pub worst: Option<Cube>,
    pub worst_fraction: f64,
}

pub fn verify_sparse(family: &SparseFamily) -> SparseReport {
    verify_sparse_with(family, Containment::Strict)
}

/// `max_P |∪_{Q∈S, Q inside P} Q| / |P|` over members `P`, with `ok` iff ≤ ½.
pub fn verify_sparse_with(family: &SparseFamily, containment: Containment) -> SparseReport {
    let covered = strict_cover_counts(family);
    let depth = family.depth;
    let mut worst: Option<(Cube, u64)> = None;
    for p in family.cubes() {
        let count = match containment {
            Containment::Strict => covered[p.level as usize][p.index as usize],
            Containment::NonStrict => 1u64 << (depth - p.level),
        };
        // compare count/|P| exactly: counts are relative to 2^(depth - level) cells
        let better = match worst {
            None => true,
            Some((w, wc)) => (count as u128) << (depth - w.level) > (wc as u128) << (depth - p.level),
        };
        if better {
            worst = Some((*p, count));
        }
    }
    match worst {
        None => SparseReport { ok: true, worst: None, worst_fraction: 0.0 },
        Some((p, count)) => {
            let total = 1u64 << (depth - p.level);
            SparseReport { ok: 2 * count <= total, worst: Some(p), worst_fraction: count as f64 / total as f64 }
        }
    }
}

/// For every cube, the number of finest cells covered by members strictly inside it.
fn strict_cover_counts(family: &SparseFamily) -> Vec<Vec<u64>> {
    let depth = family.depth as usize;
    let mut counts: Vec<Vec<u64>> = (0..=depth).map(|l| vec![0; 1usize << l]).collect();
    for level in (0..depth).rev() {
        let child_size = 1u64 << (depth - level - 1);
        for k in 0..1usize << level {
            counts[level][k] = (0..2)
                .map(|j| {
                    let c = 2 * k + j;
                    if family.member[level + 1][c] {
                        child_size
                    } else {
                        counts[level + 1][c]
                    }
                })
                .sum();
        }
    }
    counts
}

/// `Σ_{Q∈S, Q inside P} |Q|` (default reading `Q ⊆ P`).
pub fn carleson_sum(family: &SparseFamily, p: Cube) -> f64 {
    carleson_sum_with(family, p, Containment::NonStrict)
}

pub fn carleson_sum_with(family: &SparseFamily, p: Cube, containment: Containment) -> f64 {
    family.cubes().iter().filter(|q| containment.holds(&p, q)).map(Cube::length).sum()
}

/// A set of finest cells as sorted, disjoint half-open ranges.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CellSet {
    pub ranges: Vec<Range<usize>>,
}

impl CellSet {
    pub fn cell_count(&self) -> usize {
        self.ranges.iter().map(|r| r.len()).sum()
    }

    /// Lebesgue measure in a lattice of `depth`.
    pub fn measure(&self, depth: u32) -> f64 {
        self.cell_count() as f64 * crate::lattice::pow2(-(depth as i32))
    }

    pub fn contains(&self, cell: usize) -> bool {
        self.ranges.iter().any(|r| r.contains(&cell))
    }

    pub fn cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.ranges.iter().flat_map(|r| r.clone())
    }
}

/// `E_Q = Q \ ∪{members strictly inside Q}` for every member, computed by
/// removing the maximal members strictly inside `Q`. Fails on non-sparse input.
pub fn exceptional_sets(family: &SparseFamily) -> Result<BTreeMap<Cube, CellSet>> {
    let report = verify_sparse(family);
    if !report.ok {
        return Err(Error::NotSparse { worst: report.worst.unwrap_or(Cube::ROOT), fraction: report.worst_fraction });
    }
    let depth = family.depth;
    let children = family.maximal_children();
    let mut out = BTreeMap::new();
    for (q, inner) in children {
        let whole = q.cells(depth);
        let mut ranges = Vec::new();
        let mut cursor = whole.start;
        // inner members are disjoint and sorted by position
        for c in inner {
            let r = c.cells(depth);
            if r.start > cursor {
                ranges.push(cursor..r.start);
            }
            cursor = r.end;
        }
        if cursor < whole.end {
            ranges.push(cursor..whole.end);
        }
        out.insert(q, CellSet { ranges });
    }
    Ok(out)
}

/// Members of `cubes` not strictly contained in another member of `cubes`.
pub fn maximal_cubes(cubes: &[Cube]) -> Vec<Cube> {
    let set: std::collections::HashSet<Cube> = cubes.iter().copied().collect();
    let mut out: Vec<Cube> = cubes
        .iter()
        .copied()
        .filter(|q| {
            let mut cur = q.parent();
            while let Some(a) = cur {
                if set.contains(&a) {
                    return false;
                }
                cur = a.parent();
            }
            true
        })
        .collect();
    out.sort();
    out.dedup();
    out
}

/// Shape of randomly generated families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BranchingProfile {
    /// The nested chain at the left edge.
    Cascade,
    /// Random antichains: each visited descendant is selected with
    /// probability `select` (budget permitting), otherwise refined with
    /// probability `descend`.
    Random { select: f64, descend: f64 },
}

impl Default for BranchingProfile {
    fn default() -> Self {
        BranchingProfile::Random { select: 0.4, descend: 0.8 }
    }
}

impl FromStr for BranchingProfile {
    type Err = Error;

    /// `cascade`, `random`, or `random:<select>:<descend>`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["cascade"] => Ok(BranchingProfile::Cascade),
            ["random"] => Ok(BranchingProfile::default()),
            ["random", select, descend] => {
                let parse = |v: &str| {
                    v.parse::<f64>()
                        .ok()
                        .filter(|x| (0.0..=1.0).contains(x))
                        .ok_or_else(|| Error::Config(format!("bad probability {v:?} in profile {s:?}")))
                };
                Ok(BranchingProfile::Random { select: parse(select)?, descend: parse(descend)? })
            }
            _ => Err(Error::Config(format!("unknown branching profile {s:?}"))),
        }
    }
}

/// Random ½-sparse family containing the root, reproducible from `seed`.
pub fn generate_sparse(depth: u32, seed: u64, profile: BranchingProfile) -> SparseFamily {
    let family = match profile {
        BranchingProfile::Cascade => SparseFamily::cascade(depth),
        BranchingProfile::Random { select, descend } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(2);
            let mut chosen = vec![Cube::ROOT];
            let mut pending = vec![Cube::ROOT];
            while let Some(q) = pending.pop() {
                let picked = random_antichain(q, depth, select, descend, &mut rng);
                chosen.extend_from_slice(&picked);
                pending.extend(picked.into_iter().rev());
            }
            SparseFamily::from_cubes(depth, chosen).expect("generated cubes are in range")
        }
    };
    let report = verify_sparse(&family);
    assert!(report.ok, "generator produced a non-sparse family: {report:?}");
    family
}

/// Antichain of strict descendants of `q` with total length at most `|q|/2`.
fn random_antichain(q: Cube, depth: u32, select: f64, descend: f64, rng: &mut ChaCha8Rng) -> Vec<Cube> {
    if q.level >= depth {
        return Vec::new();
    }
    let mut budget = 1u64 << (depth - q.level - 1);
    let mut picked = Vec::new();
    let (a, b) = q.children();
    let mut stack = vec![a, b];
    stack.shuffle(rng);
    while let Some(c) = stack.pop() {
        if budget == 0 {
            break;
        }
        let size = 1u64 << (depth - c.level);
        if size <= budget && rng.random::<f64>() < select {
            budget -= size;
            picked.push(c);
        } else if c.level < depth && rng.random::<f64>() < descend {
            let (x, y) = c.children();
            let mut pair = [x, y];
            pair.shuffle(rng);
            stack.extend(pair);
        }
    }
    picked.sort();
    picked
}
