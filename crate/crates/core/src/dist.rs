//! Outcome distributions: Bernoulli success models and Gaussian mixtures over
//! normalized scores, with the closed-form quantities the rest of the engine needs.

use libm::erfc;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound on every mixture component's standard deviation.
pub const SIGMA_MIN: f64 = 0.01;

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` inside log-likelihoods.
pub const PROB_CLAMP: f64 = 1e-6;

/// Default number of equal-width bins over `[0, 1]` used for mixture entropies.
pub const DEFAULT_BINS: usize = 25;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Parameters of a predicted outcome distribution for one policy-task pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionParams {
    Bernoulli {
        p: f64,
    },
    GaussianMixture {
        weights: Vec<f64>,
        means: Vec<f64>,
        stds: Vec<f64>,
    },
}

impl DistributionParams {
    pub fn bernoulli(p: f64) -> Result<Self> {
        let params = DistributionParams::Bernoulli { p };
        params.validate()?;
        Ok(params)
    }

    pub fn mixture(weights: Vec<f64>, means: Vec<f64>, stds: Vec<f64>) -> Result<Self> {
        let params = DistributionParams::GaussianMixture {
            weights,
            means,
            stds,
        };
        params.validate()?;
        Ok(params)
    }

    /// Single-component mixture.
    pub fn gaussian(mean: f64, std: f64) -> Result<Self> {
        Self::mixture(vec![1.0], vec![mean], vec![std])
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DistributionParams::Bernoulli { p } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::InvalidParams(format!("bernoulli p = {p}")));
                }
            }
            DistributionParams::GaussianMixture {
                weights,
                means,
                stds,
            } => {
                let k = weights.len();
                if k == 0 || means.len() != k || stds.len() != k {
                    return Err(Error::InvalidParams(format!(
                        "mixture shape mismatch: {} weights, {} means, {} stds",
                        k,
                        means.len(),
                        stds.len()
                    )));
                }
                if weights.iter().any(|w| !(*w >= 0.0)) {
                    return Err(Error::InvalidParams("negative mixture weight".into()));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-6 {
                    return Err(Error::InvalidParams(format!("weights sum to {total}")));
                }
                if means.iter().any(|m| !m.is_finite()) {
                    return Err(Error::InvalidParams("non-finite mixture mean".into()));
                }
                if stds.iter().any(|s| !(*s >= SIGMA_MIN) || !s.is_finite()) {
                    return Err(Error::InvalidParams(format!(
                        "mixture std below {SIGMA_MIN} or non-finite"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn is_bernoulli(&self) -> bool {
        matches!(self, DistributionParams::Bernoulli { .. })
    }

    pub fn mean(&self) -> f64 {
        match self {
            DistributionParams::Bernoulli { p } => *p,
            DistributionParams::GaussianMixture { weights, means, .. } => {
                weights.iter().zip(means).map(|(w, m)| w * m).sum()
            }
        }
    }

    /// Log-likelihood of a single outcome.
    pub fn log_likelihood(&self, x: f64) -> f64 {
        match self {
            DistributionParams::Bernoulli { p } => {
                let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                x * p.ln() + (1.0 - x) * (1.0 - p).ln()
            }
            DistributionParams::GaussianMixture {
                weights,
                means,
                stds,
            } => {
                let terms = weights
                    .iter()
                    .zip(means)
                    .zip(stds)
                    .map(|((w, m), s)| w.ln() + normal_log_pdf(x, *m, *s));
                log_sum_exp(terms)
            }
        }
    }

    /// Probability mass of each of `n_bins` equal-width bins over `[0, 1]`,
    /// renormalized so that mass falling outside the unit interval is discarded.
    pub fn binned_masses(&self, n_bins: usize) -> Result<Vec<f64>> {
        let DistributionParams::GaussianMixture {
            weights,
            means,
            stds,
        } = self
        else {
            return Err(Error::NotBinnable);
        };
        if n_bins < 2 {
            return Err(Error::InvalidConfig(format!("n_bins = {n_bins}, need >= 2")));
        }
        let mut masses = vec![0.0; n_bins];
        for ((w, m), s) in weights.iter().zip(means).zip(stds) {
            if *w == 0.0 {
                continue;
            }
            for (b, mass) in masses.iter_mut().enumerate() {
                let lo = b as f64 / n_bins as f64;
                let hi = (b + 1) as f64 / n_bins as f64;
                *mass += w * normal_interval((lo - m) / s, (hi - m) / s);
            }
        }
        let total: f64 = masses.iter().sum();
        if total > 0.0 && total.is_finite() {
            masses.iter_mut().for_each(|m| *m /= total);
        } else {
            // All mass lies far outside [0, 1]; put it on the nearest edge bin.
            masses.iter_mut().for_each(|m| *m = 0.0);
            let edge = if self.mean() < 0.5 { 0 } else { n_bins - 1 };
            masses[edge] = 1.0;
        }
        Ok(masses)
    }

    /// Entropy of the outcome distribution in nats: closed form for Bernoulli,
    /// binned over `[0, 1]` for mixtures.
    pub fn entropy(&self, n_bins: usize) -> Result<f64> {
        match self {
            DistributionParams::Bernoulli { p } => Ok(binary_entropy(*p)),
            DistributionParams::GaussianMixture { .. } => {
                Ok(binned_entropy(&self.binned_masses(n_bins)?))
            }
        }
    }
}

/// `-sum m ln m` with `0 ln 0 = 0`.
pub fn binned_entropy(masses: &[f64]) -> f64 {
    -masses
        .iter()
        .filter(|&&m| m > 0.0)
        .map(|&m| m * m.ln())
        .sum::<f64>()
}

/// Entropy of a two-point distribution in nats.
pub fn binary_entropy(p: f64) -> f64 {
    binned_entropy(&[p, 1.0 - p])
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// `P(lo <= Z <= hi)` for a standard normal, using whichever tail keeps the
/// difference away from cancellation near 1.
fn normal_interval(lo: f64, hi: f64) -> f64 {
    let upper_tail = |z: f64| 0.5 * erfc(z / std::f64::consts::SQRT_2);
    let mass = if lo > 0.0 {
        upper_tail(lo) - upper_tail(hi)
    } else {
        normal_cdf(hi) - normal_cdf(lo)
    };
    mass.max(0.0)
}

pub fn normal_log_pdf(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    -0.5 * z * z - std.ln() - LN_SQRT_2PI
}

pub fn log_sum_exp(terms: impl IntoIterator<Item = f64>) -> f64 {
    let terms: Vec<f64> = terms.into_iter().collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;

    fn gmm(w: &[f64], m: &[f64], s: &[f64]) -> DistributionParams {
        DistributionParams::mixture(w.to_vec(), m.to_vec(), s.to_vec()).unwrap()
    }

    #[test]
    fn means() {
        assert_eq!(DistributionParams::bernoulli(0.7).unwrap().mean(), 0.7);
        assert_eq!(gmm(&[0.5, 0.5], &[0.0, 1.0], &[0.1, 0.1]).mean(), 0.5);
        assert_eq!(gmm(&[1.0, 0.0], &[0.3, 0.9], &[0.1, 0.1]).mean(), 0.3);
    }

    #[test]
    fn log_likelihoods() {
        let coin = DistributionParams::bernoulli(0.5).unwrap();
        assert_abs_diff_eq!(coin.log_likelihood(1.0), -std::f64::consts::LN_2, epsilon = 1e-12);

        let std_normal = gmm(&[1.0], &[0.4], &[1.0]);
        assert_abs_diff_eq!(std_normal.log_likelihood(0.4), -LN_SQRT_2PI, epsilon = 1e-12);

        // mpmath, 40 digits: ln(0.3 N(0.75; 0.2, 0.05) + 0.7 N(0.75; 0.8, 0.1))
        let two = gmm(&[0.3, 0.7], &[0.2, 0.8], &[0.05, 0.1]);
        assert_abs_diff_eq!(two.log_likelihood(0.75), 0.901_971_615_850_640_6, epsilon = 1e-12);
    }

    #[test]
    fn bernoulli_log_likelihood_is_clamped() {
        let certain = DistributionParams::bernoulli(1.0).unwrap();
        let ll = certain.log_likelihood(0.0);
        assert!(ll.is_finite());
        assert_abs_diff_eq!(ll, PROB_CLAMP.ln(), epsilon = 1e-9);
    }

    #[test]
    fn invalid_params_are_rejected() {
        assert!(DistributionParams::bernoulli(1.2).is_err());
        assert!(DistributionParams::mixture(vec![0.6, 0.6], vec![0.0, 1.0], vec![0.1, 0.1]).is_err());
        assert!(DistributionParams::mixture(vec![1.0], vec![0.0], vec![0.001]).is_err());
        assert!(DistributionParams::mixture(vec![], vec![], vec![]).is_err());
    }

    #[test]
    fn flat_density_gives_uniform_masses() {
        let flat = gmm(&[1.0], &[0.5], &[1e6]);
        for m in flat.binned_masses(25).unwrap() {
            assert_abs_diff_eq!(m, 1.0 / 25.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn spike_puts_all_mass_in_one_bin() {
        let spike = DistributionParams::GaussianMixture {
            weights: vec![1.0],
            means: vec![0.5],
            stds: vec![0.001],
        };
        let masses = spike.binned_masses(25).unwrap();
        assert_abs_diff_eq!(masses[12], 1.0, epsilon = 1e-9);
        let rest: f64 = masses.iter().enumerate().filter(|(b, _)| *b != 12).map(|(_, m)| m).sum();
        assert!(rest < 1e-9);
    }

    #[test]
    fn bimodal_masses_match_quadrature() {
        // mpmath quadrature of the density over each bin, then renormalized.
        const EXPECTED: [f64; 13] = [
            0.047_234_356_990_792_46,
            0.117_425_745_283_291_96,
            0.159_039_920_793_402_03,
            0.117_425_745_283_291_96,
            0.047_234_356_990_792_46,
            0.010_332_568_096_433_036,
            0.001_225_900_262_870_818_1,
            7.863_702_583_875_916e-5,
            2.718_291_308_202_457e-6,
            5.047_720_073_934_335e-8,
            5.021_012_125_935_661e-10,
            2.668_802_259_900_855_4e-12,
            1.512_838_634_355_405_4e-14,
        ];
        let masses = gmm(&[0.5, 0.5], &[0.1, 0.9], &[0.05, 0.05]).binned_masses(25).unwrap();
        for b in 0..25 {
            let expected = EXPECTED[b.min(24 - b)];
            assert_abs_diff_eq!(masses[b], expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn binned_masses_reject_bernoulli() {
        let coin = DistributionParams::bernoulli(0.5).unwrap();
        assert!(matches!(coin.binned_masses(25), Err(Error::NotBinnable)));
    }

    #[test]
    fn entropies() {
        assert_abs_diff_eq!(binned_entropy(&[1.0 / 25.0; 25]), 25f64.ln(), epsilon = 1e-12);
        let mut point = vec![0.0; 25];
        point[3] = 1.0;
        assert_eq!(binned_entropy(&point), 0.0);
        let mut two = vec![0.0; 25];
        two[0] = 0.5;
        two[1] = 0.5;
        assert_abs_diff_eq!(binned_entropy(&two), std::f64::consts::LN_2, epsilon = 1e-12);
    }

    fn arb_mixture() -> impl Strategy<Value = DistributionParams> {
        (1usize..=3)
            .prop_flat_map(|k| {
                (
                    prop::collection::vec(0.01f64..1.0, k),
                    prop::collection::vec(-0.5f64..1.5, k),
                    prop::collection::vec(SIGMA_MIN..2.0, k),
                )
            })
            .prop_map(|(w, m, s)| {
                let total: f64 = w.iter().sum();
                let w = w.iter().map(|x| x / total).collect();
                DistributionParams::mixture(w, m, s).unwrap()
            })
    }

    proptest! {
        #[test]
        fn mixture_mean_within_component_means(params in arb_mixture()) {
            let DistributionParams::GaussianMixture { means, .. } = &params else { unreachable!() };
            let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mean = params.mean();
            prop_assert!(mean >= lo - 1e-12 && mean <= hi + 1e-12);
        }

        #[test]
        fn masses_are_a_distribution(params in arb_mixture(), n in 2usize..40) {
            let masses = params.binned_masses(n).unwrap();
            prop_assert!(masses.iter().all(|&m| m >= 0.0));
            prop_assert!((masses.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let h = binned_entropy(&masses);
            prop_assert!(h >= 0.0 && h <= (n as f64).ln() + 1e-12);
        }
    }
}
