//! The sparse operator `f ↦ T_S(fσ)` and its `L^p(σ) → L^p(w)` norm.
//!
//! The kernel of `T_S(·σ)` is nonnegative, so `|T_S(fσ)| ≤ T_S(|f|σ)`
//! pointwise and the norm is attained on nonnegative `f`. Every estimator
//! below searches the nonnegative cone only.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{check_exponent, dual_exponent};
use crate::error::{Error, Result};
use crate::lattice::{pow2, CellFunction, Cube, CubeTable, Measure, WeightedModel};
use crate::sparse::SparseFamily;

/// Largest depth for which dense kernel matrices are built.
pub const DENSE_LIMIT: u32 = 12;
/// Largest depth at which the automatic method picks the dense eigensolver.
pub const AUTO_EIGEN_LIMIT: u32 = 8;
/// Largest depth accepted by the simplex-grid brute force.
pub const BRUTE_FORCE_LIMIT: u32 = 3;

fn check_depths(model: &WeightedModel, family: &SparseFamily) -> Result<()> {
    if family.depth() != model.depth() {
        return Err(Error::DepthMismatch { expected: model.depth(), actual: family.depth() });
    }
    Ok(())
}

/// `x ↦ Σ_{S∈family} ⟨f μ⟩_S 1_S(x)` with `μ` the chosen weight.
pub fn apply_weighted(
    model: &WeightedModel,
    family: &SparseFamily,
    f: &CellFunction,
    weight: Measure,
) -> Result<CellFunction> {
    check_depths(model, family)?;
    model.check_function(f)?;
    let depth = model.depth();
    let h = model.cell_length();
    let leaves: Vec<f64> = match model.density(weight) {
        Some(d) => f.values.iter().zip(d).map(|(v, d)| v * d * h).collect(),
        None => f.values.iter().map(|v| v * h).collect(),
    };
    let sums = CubeTable::sums_of(&leaves);
    // downward pass: acc(Q) = Σ over members containing Q of their averages
    let mut acc = vec![0.0];
    for level in 0..=depth {
        let scale = pow2(level as i32);
        let width = 1usize << level;
        let mut next = Vec::with_capacity(width);
        for k in 0..width {
            let inherited = if level == 0 { 0.0 } else { acc[k / 2] };
            let q = Cube { level, index: k as u64 };
            let own = if family.contains(&q) { sums.get(q) * scale } else { 0.0 };
            next.push(inherited + own);
        }
        acc = next;
    }
    Ok(CellFunction { depth, values: acc })
}

/// `T_S(fσ)` as exact cell values.
pub fn apply_sparse(model: &WeightedModel, family: &SparseFamily, f: &CellFunction) -> Result<CellFunction> {
    apply_weighted(model, family, f, Measure::Sigma)
}

/// `A[x,c] = Σ_{S∈family, S ∋ x, c} 1/|S|`, the symmetric part of the kernel.
fn averaging_matrix(family: &SparseFamily, limit: u32) -> Result<DMatrix<f64>> {
    let depth = family.depth();
    if depth > limit {
        return Err(Error::DenseLimit { depth, limit });
    }
    let n = 1usize << depth;
    let mut a = DMatrix::zeros(n, n);
    for s in family.cubes() {
        let inv = pow2(s.level as i32);
        let cells = s.cells(depth);
        for c in cells.clone() {
            for x in cells.clone() {
                a[(x, c)] += inv;
            }
        }
    }
    Ok(a)
}

/// Dense kernel `K` with `T_S(fσ)(x) = Σ_c K[x,c] f_c`.
pub fn kernel_matrix(model: &WeightedModel, family: &SparseFamily) -> Result<DMatrix<f64>> {
    kernel_matrix_with_limit(model, family, DENSE_LIMIT)
}

pub fn kernel_matrix_with_limit(model: &WeightedModel, family: &SparseFamily, limit: u32) -> Result<DMatrix<f64>> {
    check_depths(model, family)?;
    let mut k = averaging_matrix(family, limit)?;
    let h = model.cell_length();
    for (c, s) in model.sigma().iter().enumerate() {
        k.column_mut(c).scale_mut(s * h);
    }
    Ok(k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMethod {
    ExactEigenP2,
    ProjectedAscent,
    BruteForce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormCertificate {
    pub restarts: usize,
    /// Relative change of the iterate at termination (ascent), eigen-residual
    /// (eigensolver), or final pattern-search step (brute force).
    pub residual: f64,
    pub converged: bool,
    /// Largest minus smallest restart value.
    pub spread: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub value: f64,
    pub method: NormMethod,
    pub maximizer: CellFunction,
    pub certificate: NormCertificate,
}

/// `‖T_S(fσ)‖_{L^p(w)} / ‖f‖_{L^p(σ)}`; zero for `f = 0`.
pub fn norm_ratio(model: &WeightedModel, family: &SparseFamily, f: &CellFunction, p: f64) -> Result<f64> {
    let tf = apply_sparse(model, family, f)?;
    let den = model.lp_norm(f, Measure::Sigma, p);
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(model.lp_norm(&tf, Measure::W, p) / den)
}

/// Exact `L²(σ) → L²(w)` norm from the top eigenpair of
/// `D_σ^½ A D_w A D_σ^½`, where `D_μ = diag(μ_c |c|)`.
pub fn norm_p2(model: &WeightedModel, family: &SparseFamily) -> Result<NormEstimate> {
    check_depths(model, family)?;
    let a = averaging_matrix(family, DENSE_LIMIT)?;
    let h = model.cell_length();
    let sqrt_w: Vec<f64> = model.w().iter().map(|d| (d * h).sqrt()).collect();
    let sqrt_s: Vec<f64> = model.sigma().iter().map(|d| (d * h).sqrt()).collect();
    let n = model.cells();
    let b = DMatrix::from_fn(n, n, |x, c| sqrt_w[x] * a[(x, c)] * sqrt_s[c]);
    let gram = b.tr_mul(&b);
    let eigen = SymmetricEigen::new(gram.clone());
    let (top, lambda) = eigen.eigenvalues.iter().copied().enumerate().fold((0, f64::NEG_INFINITY), |best, (i, v)| {
        if v > best.1 {
            (i, v)
        } else {
            best
        }
    });
    let lambda = lambda.max(0.0);
    let v = eigen.eigenvectors.column(top).into_owned();
    let residual = if lambda > 0.0 { (&gram * &v - &v * lambda).norm() / lambda } else { 0.0 };
    // a nonnegative matrix has a nonnegative top eigenvector; |v| is optimal either way
    let values: Vec<f64> = v.iter().zip(&sqrt_s).map(|(x, s)| x.abs() / s).collect();
    let maximizer = normalized(model, CellFunction { depth: model.depth(), values }, 2.0);
    Ok(NormEstimate {
        value: lambda.sqrt(),
        method: NormMethod::ExactEigenP2,
        maximizer,
        certificate: NormCertificate { restarts: 1, residual, converged: true, spread: 0.0, iterations: 1 },
    })
}

fn normalized(model: &WeightedModel, mut f: CellFunction, p: f64) -> CellFunction {
    let norm = model.lp_norm(&f, Measure::Sigma, p);
    if norm > 0.0 {
        f.values.iter_mut().for_each(|v| *v /= norm);
    }
    f
}

/// Settings for the multiplicative ascent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AscentOptions {
    pub restarts: usize,
    pub seed: u64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for AscentOptions {
    fn default() -> Self {
        AscentOptions { restarts: 16, seed: 0, max_iterations: 50_000, tolerance: 1e-12 }
    }
}

struct Run {
    value: f64,
    maximizer: CellFunction,
    residual: f64,
    iterations: usize,
    converged: bool,
}

/// One chain of the nonlinear power method
/// `f ← (T_S(w · (T_S(fσ))^(p-1)))^(1/(p-1))`, normalized in `L^p(σ)`.
fn ascent_run(
    model: &WeightedModel,
    family: &SparseFamily,
    p: f64,
    start: CellFunction,
    opts: &AscentOptions,
) -> Result<Run> {
    let mut f = normalized(model, start, p);
    let inv = 1.0 / (p - 1.0);
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        iterations += 1;
        let g = apply_weighted(model, family, &f, Measure::Sigma)?;
        let u = CellFunction { depth: g.depth, values: g.values.iter().map(|x| x.powf(p - 1.0)).collect() };
        let v = apply_weighted(model, family, &u, Measure::W)?;
        let next = CellFunction { depth: v.depth, values: v.values.iter().map(|x| x.powf(inv)).collect() };
        let next = normalized(model, next, p);
        let scale = next.values.iter().fold(0.0f64, |m, x| m.max(*x));
        if scale == 0.0 {
            // the family annihilates f: zero operator
            f = next;
            residual = 0.0;
            converged = true;
            break;
        }
        residual = f.values.iter().zip(&next.values).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale;
        f = next;
        if residual < opts.tolerance {
            converged = true;
            break;
        }
    }
    let value = norm_ratio(model, family, &f, p)?;
    Ok(Run { value, maximizer: f, residual, iterations, converged })
}

fn start_vector(depth: u32, seed: u64, restart: usize) -> CellFunction {
    let n = 1usize << depth;
    if restart == 0 {
        return CellFunction::constant(depth, 1.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    CellFunction { depth, values: (0..n).map(|_| rng.random_range(0.05..1.0)).collect() }
}

/// `‖T_S σ· : L^p(σ) → L^p(w)‖` by multiplicative ascent with seeded restarts.
pub fn norm_general(
    model: &WeightedModel,
    family: &SparseFamily,
    p: f64,
    opts: &AscentOptions,
) -> Result<NormEstimate> {
    check_exponent(p)?;
    check_depths(model, family)?;
    let restarts = opts.restarts.max(1);
    let runs: Vec<Run> = (0..restarts)
        .into_par_iter()
        .map(|i| ascent_run(model, family, p, start_vector(model.depth(), opts.seed, i), opts))
        .collect::<Result<_>>()?;
    let lo = runs.iter().map(|r| r.value).fold(f64::INFINITY, f64::min);
    let hi = runs.iter().map(|r| r.value).fold(f64::NEG_INFINITY, f64::max);
    let iterations = runs.iter().map(|r| r.iterations).sum();
    // first restart attaining the max wins
    let best =
        runs.into_iter().reduce(|best, r| if r.value > best.value { r } else { best }).expect("at least one restart");
    Ok(NormEstimate {
        value: best.value,
        method: NormMethod::ProjectedAscent,
        maximizer: best.maximizer,
        certificate: NormCertificate {
            restarts,
            residual: best.residual,
            converged: best.converged,
            spread: hi - lo,
            iterations,
        },
    })
}

/// Norm of the dual operator `T_S w· : L^p'(w) → L^p'(σ)`, computed by
/// exchanging the weights; equal to the primal norm by duality.
pub fn dual_norm(model: &WeightedModel, family: &SparseFamily, p: f64, opts: &AscentOptions) -> Result<NormEstimate> {
    check_exponent(p)?;
    norm_general(&model.swapped(), family, dual_exponent(p), opts)
}

/// Number of lattice points `{f ∈ ℕ^n : Σ f = steps}`.
fn simplex_points(n: usize, steps: u64) -> f64 {
    // C(steps + n - 1, n - 1)
    (1..n).fold(1.0, |acc, k| acc * (steps as f64 + k as f64) / k as f64)
}

/// Brute-force maximization over the nonnegative simplex grid with step
/// `1/steps`, followed by a compass search from the best grid point.
/// `steps` is reduced from `max_steps` until the grid has at most
/// `max_points` points.
pub fn norm_brute(
    model: &WeightedModel,
    family: &SparseFamily,
    p: f64,
    max_steps: u64,
    max_points: f64,
) -> Result<NormEstimate> {
    check_exponent(p)?;
    check_depths(model, family)?;
    if model.depth() > BRUTE_FORCE_LIMIT {
        return Err(Error::Config(format!(
            "brute force is limited to depth {BRUTE_FORCE_LIMIT}, got {}",
            model.depth()
        )));
    }
    let n = model.cells();
    let mut steps = max_steps.max(1);
    while steps > 1 && simplex_points(n, steps) > max_points {
        steps -= 1;
    }
    let k = kernel_matrix(model, family)?;
    let h = model.cell_length();
    let w: Vec<f64> = model.w().iter().map(|d| d * h).collect();
    let s: Vec<f64> = model.sigma().iter().map(|d| d * h).collect();
    let objective = |f: &[f64]| -> f64 {
        let mut num = 0.0;
        for x in 0..n {
            let g: f64 = (0..n).map(|c| k[(x, c)] * f[c]).sum();
            num += w[x] * g.powf(p);
        }
        let den: f64 = f.iter().zip(&s).map(|(v, s)| s * v.powf(p)).sum();
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    };

    let mut point = vec![0u64; n];
    let mut best = (f64::NEG_INFINITY, vec![0.0; n]);
    enumerate_simplex(&mut point, 0, steps, &mut |pt| {
        let f: Vec<f64> = pt.iter().map(|&v| v as f64 / steps as f64).collect();
        let val = objective(&f);
        if val > best.0 {
            best = (val, f);
        }
    });

    let (mut val, mut f) = best;
    let mut step = 1.0 / steps as f64;
    let mut iterations = 0;
    while step > 1e-10 {
        let mut improved = false;
        for c in 0..n {
            for dir in [1.0, -1.0] {
                let mut trial = f.clone();
                trial[c] = (trial[c] + dir * step).max(0.0);
                let tv = objective(&trial);
                iterations += 1;
                if tv > val {
                    val = tv;
                    f = trial;
                    improved = true;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    let maximizer = normalized(model, CellFunction { depth: model.depth(), values: f }, p);
    Ok(NormEstimate {
        value: val.max(0.0).powf(1.0 / p),
        method: NormMethod::BruteForce,
        maximizer,
        certificate: NormCertificate { restarts: 1, residual: step, converged: true, spread: 0.0, iterations },
    })
}

fn enumerate_simplex(point: &mut [u64], pos: usize, remaining: u64, visit: &mut impl FnMut(&[u64])) {
    if pos + 1 == point.len() {
        point[pos] = remaining;
        visit(point);
        return;
    }
    for v in 0..=remaining {
        point[pos] = v;
        enumerate_simplex(point, pos + 1, remaining - v, visit);
    }
}

/// Method selection for norm estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormChoice {
    /// Eigensolver for `p = 2` at small depth, ascent otherwise.
    #[default]
    Auto,
    Eigen,
    Ascent,
    Brute,
}

impl std::str::FromStr for NormChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(NormChoice::Auto),
            "eigen" => Ok(NormChoice::Eigen),
            "ascent" => Ok(NormChoice::Ascent),
            "brute" => Ok(NormChoice::Brute),
            _ => Err(Error::Config(format!("unknown norm method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormOptions {
    pub method: NormChoice,
    pub ascent: AscentOptions,
    pub brute_steps: u64,
    pub brute_points: f64,
}

impl Default for NormOptions {
    fn default() -> Self {
        NormOptions { method: NormChoice::Auto, ascent: AscentOptions::default(), brute_steps: 64, brute_points: 2e6 }
    }
}

/// The primal norm with the configured method.
pub fn estimate_norm(model: &WeightedModel, family: &SparseFamily, p: f64, opts: &NormOptions) -> Result<NormEstimate> {
    check_exponent(p)?;
    match opts.method {
        NormChoice::Eigen => {
            if p != 2.0 {
                return Err(Error::Config(format!("the eigensolver needs p = 2, got {p}")));
            }
            norm_p2(model, family)
        }
        NormChoice::Auto if p == 2.0 && model.depth() <= AUTO_EIGEN_LIMIT => norm_p2(model, family),
        NormChoice::Auto | NormChoice::Ascent => norm_general(model, family, p, &opts.ascent),
        NormChoice::Brute => norm_brute(model, family, p, opts.brute_steps, opts.brute_points),
    }
}

/// The dual norm with the configured method.
pub fn estimate_dual_norm(
    model: &WeightedModel,
    family: &SparseFamily,
    p: f64,
    opts: &NormOptions,
) -> Result<NormEstimate> {
    check_exponent(p)?;
    estimate_norm(&model.swapped(), family, dual_exponent(p), opts)
}
