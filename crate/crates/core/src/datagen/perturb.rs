use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cell::AgingParameterSet;
use crate::error::{Error, Result};

/// Proportional noise applied to an aging set: for each mean, draw
/// `draws_per_mean` 7-vectors of independent normal multipliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbationConfig {
    pub means: Vec<f64>,
    pub std: f64,
    pub draws_per_mean: usize,
    pub seed: u64,
    pub clamp_lo: f64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            means: vec![1.0, 0.9, 1.1],
            std: 0.05,
            draws_per_mean: 30,
            seed: 0,
            clamp_lo: 0.5,
        }
    }
}

impl PerturbationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.std.is_finite() && self.std > 0.0) {
            return Err(Error::invalid("perturbation std must be positive"));
        }
        if self.means.is_empty() || self.means.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::invalid("perturbation means must be positive"));
        }
        if self.draws_per_mean == 0 {
            return Err(Error::invalid("draws_per_mean must be at least 1"));
        }
        Ok(())
    }

    pub fn variants_per_base(&self) -> usize {
        self.means.len() * self.draws_per_mean
    }
}

fn check_base(base: &AgingParameterSet) -> Result<()> {
    if base.to_array().iter().all(|x| x.is_finite() && *x > 0.0) {
        Ok(())
    } else {
        Err(Error::invalid("perturbation base must be positive"))
    }
}

fn expand(base: &AgingParameterSet, config: &PerturbationConfig, rng: &mut ChaCha8Rng) -> Vec<AgingParameterSet> {
    let mut out = Vec::with_capacity(config.variants_per_base());
    for &mean in &config.means {
        let dist = Normal::new(mean, config.std).expect("validated std");
        for _ in 0..config.draws_per_mean {
            let mut m = [0.0; 7];
            for x in &mut m {
                *x = dist.sample(rng).max(config.clamp_lo);
            }
            out.push(base.scaled(&m));
        }
    }
    out
}

/// Expands one base set into `means.len() × draws_per_mean` variants.
pub fn perturb_parameters(base: &AgingParameterSet, config: &PerturbationConfig) -> Result<Vec<AgingParameterSet>> {
    config.validate()?;
    check_base(base)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    Ok(expand(base, config, &mut rng))
}

/// Expands many base sets; base `i` draws from stream `i` of the seed so
/// results do not depend on how many bases precede it.
pub fn perturb_all(bases: &[AgingParameterSet], config: &PerturbationConfig) -> Result<Vec<AgingParameterSet>> {
    config.validate()?;
    let mut out = Vec::with_capacity(bases.len() * config.variants_per_base());
    for (i, b) in bases.iter().enumerate() {
        check_base(b)?;
        let mut rng = super::stream_rng(config.seed, i as u64);
        out.extend(expand(b, config, &mut rng));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn count_is_three_times_draws() {
        let base = crate::cell::CellParameters::reference().aging();
        let c = PerturbationConfig::default();
        assert_eq!(perturb_parameters(&base, &c).unwrap().len(), 90);
        let c = PerturbationConfig { draws_per_mean: 4, ..c };
        assert_eq!(perturb_all(&[base; 5], &c).unwrap().len(), 60);
    }

    #[test]
    fn tiny_std_gives_scaled_copies() {
        let c = PerturbationConfig {
            std: 1e-15,
            draws_per_mean: 2,
            ..PerturbationConfig::default()
        };
        let v = perturb_parameters(&AgingParameterSet::ones(), &c).unwrap();
        for (k, s) in v.iter().enumerate() {
            let want = c.means[k / 2];
            for x in s.to_array() {
                assert!((x - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn clamp_applies() {
        let c = PerturbationConfig {
            std: 2.0,
            draws_per_mean: 200,
            ..PerturbationConfig::default()
        };
        let v = perturb_parameters(&AgingParameterSet::ones(), &c).unwrap();
        assert!(v.iter().flat_map(|s| s.to_array()).all(|x| x >= 0.5));
    }

    #[test]
    fn rejects_bad_config() {
        let base = AgingParameterSet::ones();
        for c in [
            PerturbationConfig { std: 0.0, ..Default::default() },
            PerturbationConfig { draws_per_mean: 0, ..Default::default() },
            PerturbationConfig { means: vec![1.0, -0.1], ..Default::default() },
        ] {
            assert!(perturb_parameters(&base, &c).is_err());
        }
    }
}
