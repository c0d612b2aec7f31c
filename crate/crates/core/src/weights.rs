//! Random weight laws for generated models.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::lattice::{WeightedModel, DEFAULT_MAX_DEPTH};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightLaw {
    /// Independent `exp(scale · Z)` densities per cell.
    Lognormal { scale: f64 },
    /// Mass-preserving multiplicative cascade: at each split the children get
    /// factors `1 + t` and `1 - t`, `t` uniform in `[-½, ½]`.
    DyadicDoubling,
    /// Unit density except for one random cell with density `2^k`.
    Spike { k: i32 },
}

impl Default for WeightLaw {
    fn default() -> Self {
        WeightLaw::Lognormal { scale: 1.0 }
    }
}

impl fmt::Display for WeightLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightLaw::Lognormal { scale } => write!(f, "lognormal:{scale}"),
            WeightLaw::DyadicDoubling => write!(f, "dyadic-doubling"),
            WeightLaw::Spike { k } => write!(f, "spike:{k}"),
        }
    }
}

impl FromStr for WeightLaw {
    type Err = Error;

    /// `lognormal[:scale]`, `dyadic-doubling`, `spike[:k]` (default `k = 6`).
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let bad = || Error::Config(format!("bad weight law {s:?}"));
        match (name, arg) {
            ("lognormal", None) => Ok(WeightLaw::default()),
            ("lognormal", Some(a)) => {
                let scale: f64 = a.parse().map_err(|_| bad())?;
                if !(scale.is_finite() && scale >= 0.0) {
                    return Err(bad());
                }
                Ok(WeightLaw::Lognormal { scale })
            }
            ("dyadic-doubling", None) => Ok(WeightLaw::DyadicDoubling),
            ("spike", None) => Ok(WeightLaw::Spike { k: 6 }),
            ("spike", Some(a)) => Ok(WeightLaw::Spike { k: a.parse().map_err(|_| bad())? }),
            _ => Err(bad()),
        }
    }
}

fn densities(law: WeightLaw, depth: u32, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = 1usize << depth;
    match law {
        WeightLaw::Lognormal { scale } => (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                (scale * z).exp()
            })
            .collect(),
        WeightLaw::DyadicDoubling => {
            let mut level = vec![1.0];
            for _ in 0..depth {
                level = level
                    .iter()
                    .flat_map(|&d| {
                        let t: f64 = rng.random_range(-0.5..=0.5);
                        [d * (1.0 + t), d * (1.0 - t)]
                    })
                    .collect();
            }
            level
        }
        WeightLaw::Spike { k } => {
            let mut d = vec![1.0; n];
            d[rng.random_range(0..n)] = 2f64.powi(k);
            d
        }
    }
}

/// A model whose `w` and `σ` are independent draws from `law`.
pub fn generate_model(depth: u32, seed: u64, law: WeightLaw) -> Result<WeightedModel> {
    generate_model_capped(depth, seed, law, DEFAULT_MAX_DEPTH)
}

pub fn generate_model_capped(depth: u32, seed: u64, law: WeightLaw, max_depth: u32) -> Result<WeightedModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let w = densities(law, depth, &mut rng);
    let sigma = densities(law, depth, &mut rng);
    WeightedModel::with_max_depth(depth, w, sigma, max_depth)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spike_ratio() {
        let m = generate_model(6, 3, WeightLaw::Spike { k: 6 }).unwrap();
        let max = m.sigma().iter().cloned().fold(f64::MIN, f64::max);
        let min = m.sigma().iter().cloned().fold(f64::MAX, f64::min);
        assert_eq!(max / min, 64.0);
    }

    #[test]
    fn laws_are_deterministic_and_positive() {
        for law in [WeightLaw::default(), WeightLaw::DyadicDoubling, WeightLaw::Spike { k: 3 }] {
            let a = generate_model(5, 11, law).unwrap();
            assert_eq!(a, generate_model(5, 11, law).unwrap());
            assert!(a.w().iter().chain(a.sigma()).all(|d| *d > 0.0));
        }
    }

    #[test]
    fn doubling_cascade_preserves_mass() {
        let m = generate_model(8, 5, WeightLaw::DyadicDoubling).unwrap();
        let total = m.measure(crate::Measure::Sigma, crate::Cube::ROOT).unwrap();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parsing() {
        assert_eq!("spike:4".parse::<WeightLaw>().unwrap(), WeightLaw::Spike { k: 4 });
        assert_eq!("lognormal:0.5".parse::<WeightLaw>().unwrap(), WeightLaw::Lognormal { scale: 0.5 });
        assert_eq!("dyadic-doubling".parse::<WeightLaw>().unwrap(), WeightLaw::DyadicDoubling);
        assert!("uniform".parse::<WeightLaw>().is_err());
        let law = WeightLaw::Spike { k: 2 };
        assert_eq!(law.to_string().parse::<WeightLaw>().unwrap(), law);
    }
}
