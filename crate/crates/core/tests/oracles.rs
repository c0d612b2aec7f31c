//! Hand and enumeration oracles for the constants, the entropy functional
//! and the extremal search.

use sparsebump::analysis::{
    direct_bump_constant, entropy_bump_constant, entropy_rho, plain_ap, testing_constants, BumpFunction, Direction,
};
use sparsebump::lattice::{all_cubes, Cube, Measure, WeightedModel};
use sparsebump::operator::{apply_sparse, norm_p2};
use sparsebump::search::{extremal_search_from, Objective, SearchConfig};
use sparsebump::sparse::SparseFamily;
use sparsebump::theorems::verify_sawyer;
use sparsebump::CellFunction;

fn cube(level: u32, index: u64) -> Cube {
    Cube::new(level, index).unwrap()
}

/// Depth 1 with σ = (3, 1), w ≡ 1.
fn hand_model() -> WeightedModel {
    WeightedModel::new(1, vec![1.0, 1.0], vec![3.0, 1.0]).unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// ρ by listing, for each cell of `q`, every lattice cube through it and
/// averaging `1_q μ` over that cube.
fn rho_oracle(density: &[f64], depth: u32, q: Cube) -> f64 {
    let h = 1.0 / density.len() as f64;
    let inside = q.cells(depth);
    let mass = |r: Cube| r.cells(depth).filter(|c| inside.contains(c)).map(|c| density[c] * h).sum::<f64>();
    let integral: f64 = inside
        .clone()
        .map(|x| {
            all_cubes(depth).filter(|r| r.cells(depth).contains(&x)).map(|r| mass(r) / r.length()).fold(0.0, f64::max)
                * h
        })
        .sum();
    integral / mass(q)
}

#[test]
fn entropy_functional_matches_hand_values() {
    let m = hand_model();
    assert_eq!(entropy_rho(&m, Measure::Sigma, Cube::ROOT).unwrap(), 1.25);
    assert_eq!(entropy_rho(&m, Measure::Sigma, cube(1, 0)).unwrap(), 1.0);
    assert_eq!(entropy_rho(&m, Measure::W, Cube::ROOT).unwrap(), 1.0);
}

#[test]
fn entropy_functional_matches_enumeration() {
    let sigma: Vec<f64> = (0..16).map(|i| ((i * 7 + 3) % 11 + 1) as f64 / 4.0).collect();
    let m = WeightedModel::new(4, vec![1.0; 16], sigma.clone()).unwrap();
    for q in all_cubes(4) {
        let got = entropy_rho(&m, Measure::Sigma, q).unwrap();
        assert!(close(got, rho_oracle(&sigma, 4, q)), "{q}: {got}");
    }
}

#[test]
fn entropy_bump_constant_by_enumeration() {
    let m = hand_model();
    for (p, delta) in [(2.0, 0.2), (2.0, 0.5), (1.5, 0.1), (3.0, 1.0)] {
        let pd = p / (p - 1.0);
        let eps = |q: f64, t: f64| (1.0 + t.log2()).powf(q * (1.0 + delta));
        // (cube, ⟨w⟩, ⟨σ⟩, ρ_σ, ρ_w)
        let cubes: [(Cube, f64, f64, f64, f64); 3] =
            [(Cube::ROOT, 1.0, 2.0, 1.25, 1.0), (cube(1, 0), 1.0, 3.0, 1.0, 1.0), (cube(1, 1), 1.0, 1.0, 1.0, 1.0)];
        let ws = cubes
            .iter()
            .map(|&(_, w, s, rs, _)| w * s.powf(p - 1.0) * rs * eps(p, rs))
            .fold(f64::NEG_INFINITY, f64::max);
        let sw = cubes
            .iter()
            .map(|&(_, w, s, _, rw)| s * w.powf(pd - 1.0) * rw * eps(pd, rw))
            .fold(f64::NEG_INFINITY, f64::max);
        let got_ws =
            entropy_bump_constant(&m, p, &BumpFunction::entropy(p, delta).unwrap(), Direction::WSigma).unwrap();
        let got_sw =
            entropy_bump_constant(&m, p, &BumpFunction::entropy(pd, delta).unwrap(), Direction::SigmaW).unwrap();
        assert!(close(got_ws.value, ws), "p={p} δ={delta}: {} vs {ws}", got_ws.value);
        assert!(close(got_sw.value, sw), "p={p} δ={delta}: {} vs {sw}", got_sw.value);
    }
    // at p = 2, δ = 0.2 the root wins: 2·1.25·ε(1.25) > 3
    let got = entropy_bump_constant(&m, 2.0, &BumpFunction::entropy(2.0, 0.2).unwrap(), Direction::WSigma).unwrap();
    assert_eq!(got.witness, Cube::ROOT);
}

#[test]
fn direct_bump_constant_by_enumeration() {
    let m = hand_model();
    for (p, delta) in [(2.0, 0.2), (1.5, 0.5), (3.0, 0.1)] {
        let pd = p / (p - 1.0);
        let alpha = |q: f64, t: f64| (1.0 + t.log2().abs()).powf(q * (1.0 + delta));
        let cubes: [(f64, f64); 3] = [(1.0, 2.0), (1.0, 3.0), (1.0, 1.0)];
        let ws = cubes.iter().map(|&(w, s)| w * s.powf(p - 1.0) * alpha(p, s)).fold(f64::NEG_INFINITY, f64::max);
        let sw = cubes.iter().map(|&(w, s)| s * w.powf(pd - 1.0) * alpha(pd, w)).fold(f64::NEG_INFINITY, f64::max);
        let got_ws = direct_bump_constant(&m, p, &BumpFunction::direct(p, delta).unwrap(), Direction::WSigma).unwrap();
        let got_sw = direct_bump_constant(&m, p, &BumpFunction::direct(pd, delta).unwrap(), Direction::SigmaW).unwrap();
        assert!(close(got_ws.value, ws), "p={p}: {} vs {ws}", got_ws.value);
        assert!(close(got_sw.value, sw), "p={p}: {} vs {sw}", got_sw.value);
        let plain = cubes.iter().map(|&(w, s)| w * s.powf(p - 1.0)).fold(f64::NEG_INFINITY, f64::max);
        assert!(close(plain_ap(&m, p, Direction::WSigma).unwrap().value, plain));
    }
}

#[test]
fn operator_hand_values() {
    let m = hand_model();
    let family = SparseFamily::from_cubes(1, [Cube::ROOT, cube(1, 0)]).unwrap();
    let t = apply_sparse(&m, &family, &CellFunction::constant(1, 1.0)).unwrap();
    assert_eq!(t.values, vec![5.0, 2.0]);
}

#[test]
fn testing_constants_on_flat_weights() {
    // at P = root the stack is (2, 1), so ∫ stack² = 5/2; at P = [0,½) it is 1
    let m = WeightedModel::constant(1, 1.0).unwrap();
    let family = SparseFamily::from_cubes(1, [Cube::ROOT, cube(1, 0)]).unwrap();
    let (t1, t2) = testing_constants(&m, &family, 2.0).unwrap();
    assert!(close(t1.value, 2.5));
    assert!(close(t2.value, 2.5));
}

/// The best Sawyer ratio over all ½-sparse families of depth 1 and all
/// densities `2^k`, `|k| ≤ 3`, in each of the four cells.
fn sawyer_grid_best() -> f64 {
    let families: Vec<SparseFamily> = [
        vec![Cube::ROOT],
        vec![cube(1, 0)],
        vec![cube(1, 1)],
        vec![cube(1, 0), cube(1, 1)],
        vec![Cube::ROOT, cube(1, 0)],
        vec![Cube::ROOT, cube(1, 1)],
    ]
    .into_iter()
    .map(|c| SparseFamily::from_cubes(1, c).unwrap())
    .collect();
    let levels: Vec<f64> = (-3..=3).map(|k| 2f64.powi(k)).collect();
    let mut best = f64::NEG_INFINITY;
    for family in &families {
        for &w0 in &levels {
            for &w1 in &levels {
                for &s0 in &levels {
                    for &s1 in &levels {
                        let m = WeightedModel::new(1, vec![w0, w1], vec![s0, s1]).unwrap();
                        let norm = norm_p2(&m, family).unwrap().value;
                        let (t1, t2) = testing_constants(&m, family, 2.0).unwrap();
                        best = best.max(norm / (t1.value.sqrt() + t2.value.sqrt()));
                    }
                }
            }
        }
    }
    best
}

#[test]
fn search_matches_grid_oracle() {
    let grid = sawyer_grid_best();
    let config = SearchConfig {
        objective: Objective::Sawyer,
        p: 2.0,
        depth: 1,
        iterations: 1500,
        seed: 7,
        log2_bound: Some(3.0),
        chains: 4,
        ..SearchConfig::default()
    };
    let start = WeightedModel::constant(1, 1.0).unwrap();
    let result = extremal_search_from(&config, &start, SparseFamily::from_cubes(1, [Cube::ROOT]).unwrap()).unwrap();
    assert!((result.best_ratio - grid).abs() <= 0.01 * grid, "search {} vs grid {grid}", result.best_ratio);
    let again = verify_sawyer(&result.best_model, &result.best_family, 2.0, &Default::default()).unwrap();
    assert!((again.ratio - result.best_ratio).abs() <= 1e-9);
}

#[test]
fn depth_ladder_never_loses_ground() {
    use sparsebump::search::depth_ladder;
    for objective in [Objective::PlainAp, Objective::Theorem1] {
        let config = SearchConfig { objective, iterations: 40, seed: 3, ..SearchConfig::default() };
        let results = depth_ladder(&config, 2..=6).unwrap();
        let ratios: Vec<f64> = results.iter().map(|r| r.best_ratio).collect();
        assert!(ratios.iter().all(|r| r.is_finite()));
        assert!(ratios.windows(2).all(|w| w[1] >= w[0]), "{objective:?}: {ratios:?}");
    }
}
