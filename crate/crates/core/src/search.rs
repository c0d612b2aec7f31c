//! Simulated annealing over weight pairs (and optionally families) that
//! maximizes the ratio `lhs / rhs` of a chosen inequality.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Cube, WeightedModel};
use crate::operator::{estimate_norm, AscentOptions, NormChoice, NormOptions};
use crate::sparse::{generate_sparse, verify_sparse, BranchingProfile, SparseFamily};
use crate::theorems::{plain_ap_with_norm, theorem1_with_norm, theorem2_with_norm, verify_hytonen, verify_sawyer};
use crate::weights::{generate_model, WeightLaw};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Theorem1,
    Theorem2,
    Sawyer,
    Hytonen,
    /// The `theorem1` ratio with the bump removed entirely.
    PlainAp,
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theorem1" => Ok(Objective::Theorem1),
            "theorem2" => Ok(Objective::Theorem2),
            "sawyer" => Ok(Objective::Sawyer),
            "hytonen" => Ok(Objective::Hytonen),
            "plain_ap" | "plain-ap" => Ok(Objective::PlainAp),
            _ => Err(Error::Config(format!("unknown objective {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Proposal {
    /// Gaussian step on the log-density of one cell of one weight.
    CellwiseMultiplicative,
    /// Common Gaussian step on the log-density over one random cube.
    BlockResample,
}

impl FromStr for Proposal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cellwise-multiplicative" | "cellwise" => Ok(Proposal::CellwiseMultiplicative),
            "block-resample" | "block" => Ok(Proposal::BlockResample),
            _ => Err(Error::Config(format!("unknown proposal {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub objective: Objective,
    pub p: f64,
    pub delta: f64,
    pub depth: u32,
    pub iterations: usize,
    pub seed: u64,
    pub proposal: Proposal,
    /// Initial temperature, in units of `log(ratio)`.
    pub temperature: f64,
    /// Geometric cooling factor per iteration.
    pub cooling: f64,
    /// Standard deviation of the log-density step.
    pub step: f64,
    /// Iterations without improvement before the step is halved.
    pub plateau: usize,
    /// Probability that a proposal toggles one cube of the family instead.
    pub family_mutation_rate: f64,
    /// Optional bound `|log₂ density| ≤ bound`.
    pub log2_bound: Option<f64>,
    /// Ascent restarts used inside the chain.
    pub search_restarts: usize,
    /// Ascent restarts used for the final re-evaluation.
    pub final_restarts: usize,
    /// Independent chains from the same start, one RNG stream each.
    pub chains: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            objective: Objective::Theorem1,
            p: 2.0,
            delta: 0.2,
            depth: 4,
            iterations: 500,
            seed: 0,
            proposal: Proposal::CellwiseMultiplicative,
            temperature: 0.05,
            cooling: 0.99,
            step: 0.5,
            plateau: 50,
            family_mutation_rate: 0.1,
            log2_bound: None,
            search_restarts: 4,
            final_restarts: 16,
            chains: 1,
        }
    }
}

impl SearchConfig {
    // negated comparisons so that NaN is rejected too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        crate::analysis::check_exponent(self.p)?;
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if self.iterations < 1 {
            return bad("iterations must be at least 1");
        }
        if self.chains < 1 {
            return bad("at least one chain is needed");
        }
        if !(self.step > 0.0) {
            return bad("step must be positive");
        }
        if !(self.delta > 0.0) {
            return bad("delta must be positive");
        }
        if !(self.temperature >= 0.0) || !(self.cooling > 0.0 && self.cooling <= 1.0) {
            return bad("temperature must be ≥ 0 and cooling in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.family_mutation_rate) {
            return bad("family mutation rate must be a probability");
        }
        if self.log2_bound.is_some_and(|b| !(b >= 0.0)) {
            return bad("log2 bound must be nonnegative");
        }
        Ok(())
    }

    fn norm_options(&self, restarts: usize) -> NormOptions {
        NormOptions {
            method: NormChoice::Auto,
            ascent: AscentOptions { restarts, seed: self.seed, ..AscentOptions::default() },
            ..NormOptions::default()
        }
    }
}

/// The objective ratio for `(model, family)` with `restarts` ascent restarts.
pub fn evaluate(config: &SearchConfig, model: &WeightedModel, family: &SparseFamily, restarts: usize) -> Result<f64> {
    let opts = config.norm_options(restarts);
    let p = config.p;
    let norm = || estimate_norm(model, family, p, &opts).map(|e| e.value);
    let ratio = match config.objective {
        Objective::Theorem1 => theorem1_with_norm(model, family, p, config.delta, norm()?)?.ratio,
        Objective::Theorem2 => theorem2_with_norm(model, family, p, config.delta, norm()?)?.ratio,
        Objective::PlainAp => plain_ap_with_norm(model, p, norm()?)?.ratio,
        Objective::Sawyer => verify_sawyer(model, family, p, &opts)?.ratio,
        Objective::Hytonen => {
            let mut best = f64::NEG_INFINITY;
            for &pc in family.cubes() {
                best = best.max(verify_hytonen(model, family.cubes(), pc, p)?.ratio);
            }
            best
        }
    };
    if !ratio.is_finite() {
        return Err(Error::Domain(format!("objective is not finite: {ratio}")));
    }
    Ok(ratio)
}

/// Re-evaluation at full precision, as used for the reported best ratio.
pub fn evaluate_final(config: &SearchConfig, model: &WeightedModel, family: &SparseFamily) -> Result<f64> {
    evaluate(config, model, family, config.final_restarts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    /// Best ratio so far.
    pub best: f64,
    /// Ratio of the current chain state.
    pub current: f64,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub best_ratio: f64,
    pub best_model: WeightedModel,
    pub best_family: SparseFamily,
    pub trace: Vec<TracePoint>,
    /// Proposals dropped because the objective could not be evaluated.
    pub rejected: usize,
    /// Family mutations dropped because they broke ½-sparseness.
    pub infeasible: usize,
}

struct State {
    w: Vec<f64>,
    sigma: Vec<f64>,
    family: SparseFamily,
}

impl State {
    fn model(&self, depth: u32) -> Result<WeightedModel> {
        WeightedModel::with_max_depth(depth, self.w.clone(), self.sigma.clone(), depth)
    }
}

/// Multiplies `density` by `2^shift`, keeping `|log₂ density| ≤ bound`.
fn rescale(density: &mut f64, shift: f64, bound: Option<f64>) {
    *density *= shift.exp2();
    if let Some(b) = bound {
        *density = density.clamp((-b).exp2(), b.exp2());
    }
}

/// Runs one annealing chain. Deterministic given the config.
pub fn extremal_search(config: &SearchConfig) -> Result<SearchResult> {
    config.validate()?;
    let model = generate_model(config.depth, config.seed, WeightLaw::default())?;
    let family = generate_sparse(config.depth, config.seed, BranchingProfile::default());
    extremal_search_from(config, &model, family)
}

/// Runs `config.chains` annealing chains from a given starting point in
/// parallel and keeps the best (earliest chain on ties).
pub fn extremal_search_from(
    config: &SearchConfig,
    start: &WeightedModel,
    family: SparseFamily,
) -> Result<SearchResult> {
    config.validate()?;
    if start.depth() != config.depth || family.depth() != config.depth {
        return Err(Error::DepthMismatch { expected: config.depth, actual: start.depth() });
    }
    let results: Vec<SearchResult> = (0..config.chains as u64)
        .into_par_iter()
        .map(|chain| run_chain(config, start, family.clone(), 3 + chain))
        .collect::<Result<_>>()?;
    Ok(results.into_iter().reduce(|a, b| if b.best_ratio > a.best_ratio { b } else { a }).expect("at least one chain"))
}

fn run_chain(config: &SearchConfig, start: &WeightedModel, family: SparseFamily, stream: u64) -> Result<SearchResult> {
    let depth = config.depth;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);
    let mut state = State { w: start.w().to_vec(), sigma: start.sigma().to_vec(), family };
    for d in state.w.iter_mut().chain(state.sigma.iter_mut()) {
        rescale(d, 0.0, config.log2_bound);
    }
    let mut current = evaluate(config, &state.model(depth)?, &state.family, config.search_restarts)?;
    let mut best = (current, state.w.clone(), state.sigma.clone(), state.family.clone());
    let mut trace = vec![TracePoint { iteration: 0, best: current, current }];
    let mut temperature = config.temperature;
    let mut step = config.step;
    let mut stale = 0;
    let mut rejected = 0;
    let mut infeasible = 0;
    let cells = 1usize << depth;

    for iteration in 1..config.iterations {
        let mut cand_w = state.w.clone();
        let mut cand_s = state.sigma.clone();
        let mut cand_family = state.family.clone();
        if config.family_mutation_rate > 0.0 && rng.random::<f64>() < config.family_mutation_rate {
            let level = rng.random_range(0..=depth);
            let cube = Cube { level, index: rng.random_range(0..1u64 << level) };
            let toggled = cand_family.toggled(cube)?;
            if !verify_sparse(&toggled).ok || toggled.is_empty() {
                infeasible += 1;
                trace.push(TracePoint { iteration, best: best.0, current });
                continue;
            }
            cand_family = toggled;
        } else {
            let target = if rng.random::<bool>() { &mut cand_w } else { &mut cand_s };
            let z: f64 = StandardNormal.sample(&mut rng);
            let shift = step * z;
            match config.proposal {
                Proposal::CellwiseMultiplicative => {
                    let c = rng.random_range(0..cells);
                    rescale(&mut target[c], shift, config.log2_bound);
                }
                Proposal::BlockResample => {
                    let level = rng.random_range(0..=depth);
                    let cube = Cube { level, index: rng.random_range(0..1u64 << level) };
                    for c in cube.cells(depth) {
                        rescale(&mut target[c], shift, config.log2_bound);
                    }
                }
            }
        }
        let candidate = State { w: cand_w, sigma: cand_s, family: cand_family };
        let value =
            candidate.model(depth).and_then(|m| evaluate(config, &m, &candidate.family, config.search_restarts));
        let value = match value {
            Ok(v) if v > 0.0 => v,
            _ => {
                rejected += 1;
                trace.push(TracePoint { iteration, best: best.0, current });
                continue;
            }
        };
        let gain = value.ln() - current.ln();
        let accept = gain >= 0.0 || (temperature > 0.0 && rng.random::<f64>() < (gain / temperature).exp());
        if accept {
            state = candidate;
            current = value;
        }
        // best ≥ current, so an improvement on the best was accepted above
        if value > best.0 {
            best = (value, state.w.clone(), state.sigma.clone(), state.family.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.plateau {
                step /= 2.0;
                stale = 0;
            }
        }
        temperature *= config.cooling;
        trace.push(TracePoint { iteration, best: best.0, current });
    }

    let best_state = State { w: best.1, sigma: best.2, family: best.3 };
    let best_model = best_state.model(depth)?;
    let best_ratio = evaluate_final(config, &best_model, &best_state.family)?;
    Ok(SearchResult { best_ratio, best_model, best_family: best_state.family, trace, rejected, infeasible })
}

/// Searches depth by depth, starting each depth from the previous best
/// refined onto the finer lattice (which leaves every ratio unchanged), so
/// the best ratio per depth never decreases.
pub fn depth_ladder(config: &SearchConfig, depths: std::ops::RangeInclusive<u32>) -> Result<Vec<SearchResult>> {
    let mut results: Vec<SearchResult> = Vec::new();
    for depth in depths {
        let cfg = SearchConfig { depth, ..config.clone() };
        let result = match results.last() {
            None => {
                let model = generate_model(depth, cfg.seed, WeightLaw::default())?;
                let family = generate_sparse(depth, cfg.seed, BranchingProfile::default());
                extremal_search_from(&cfg, &model, family)?
            }
            Some(prev) => {
                let mut model = prev.best_model.clone();
                while model.depth() < depth {
                    model = model.refined()?;
                }
                let family = prev.best_family.with_depth(depth)?;
                extremal_search_from(&cfg, &model, family)?
            }
        };
        results.push(result);
    }
    Ok(results)
}

impl SearchResult {
    pub fn write_trace_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["iteration", "best", "current"])?;
        for t in &self.trace {
            out.serialize((t.iteration, t.best, t.current))?;
        }
        out.flush()?;
        Ok(())
    }
}
