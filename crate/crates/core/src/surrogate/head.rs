//! Output head: maps raw network outputs to distribution parameters and provides
//! the per-record negative log-likelihood with its gradient w.r.t. those outputs.

use serde::{Deserialize, Serialize};

use crate::dist::{log_sum_exp, normal_log_pdf, DistributionParams, PROB_CLAMP, SIGMA_MIN};

const LOGIT_LIMIT: f64 = 50.0;
const LOG_STD_MIN: f64 = -30.0;
const LOG_STD_MAX: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Head {
    /// One success logit.
    Bernoulli,
    /// `components` weight logits, then mean pre-activations, then log-std pre-activations.
    Mixture { components: usize },
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Clamps a raw output into `[lo, hi]`, mapping NaN to 0. Returns the value and
/// whether it passed through unchanged (so its gradient is live).
fn bounded(raw: f64, lo: f64, hi: f64) -> (f64, bool) {
    if raw.is_nan() {
        (0.0, false)
    } else if raw < lo {
        (lo, false)
    } else if raw > hi {
        (hi, false)
    } else {
        (raw, true)
    }
}

impl Head {
    pub fn width(self) -> usize {
        match self {
            Head::Bernoulli => 1,
            Head::Mixture { components } => 3 * components,
        }
    }

    pub fn decode(self, raw: &[f64]) -> DistributionParams {
        match self {
            Head::Bernoulli => DistributionParams::Bernoulli {
                p: sigmoid(bounded(raw[0], -LOGIT_LIMIT, LOGIT_LIMIT).0),
            },
            Head::Mixture { components: k } => {
                let logits: Vec<f64> = raw[..k]
                    .iter()
                    .map(|&a| bounded(a, -LOGIT_LIMIT, LOGIT_LIMIT).0)
                    .collect();
                let lse = log_sum_exp(logits.iter().copied());
                let mut weights: Vec<f64> = logits.iter().map(|a| (a - lse).exp()).collect();
                let total: f64 = weights.iter().sum();
                weights.iter_mut().for_each(|w| *w /= total);
                let means = raw[k..2 * k]
                    .iter()
                    .map(|&m| sigmoid(bounded(m, -LOGIT_LIMIT, LOGIT_LIMIT).0))
                    .collect();
                let stds = raw[2 * k..3 * k]
                    .iter()
                    .map(|&s| SIGMA_MIN + bounded(s, LOG_STD_MIN, LOG_STD_MAX).0.exp())
                    .collect();
                DistributionParams::GaussianMixture {
                    weights,
                    means,
                    stds,
                }
            }
        }
    }

    /// Negative log-likelihood of `x`, writing d(loss)/d(raw) into `grad`.
    pub fn nll_with_grad(self, raw: &[f64], x: f64, grad: &mut [f64]) -> f64 {
        match self {
            Head::Bernoulli => {
                let (z, live) = bounded(raw[0], -LOGIT_LIMIT, LOGIT_LIMIT);
                let p = sigmoid(z);
                let pc = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                grad[0] = if live && pc == p { p - x } else { 0.0 };
                -(x * pc.ln() + (1.0 - x) * (1.0 - pc).ln())
            }
            Head::Mixture { components: k } => {
                let mut logits = vec![0.0; k];
                let mut live_logit = vec![false; k];
                for c in 0..k {
                    (logits[c], live_logit[c]) = bounded(raw[c], -LOGIT_LIMIT, LOGIT_LIMIT);
                }
                let lse_w = log_sum_exp(logits.iter().copied());
                let log_w: Vec<f64> = logits.iter().map(|a| a - lse_w).collect();

                let mut mu = vec![0.0; k];
                let mut dmu_dm = vec![0.0; k];
                let mut sigma = vec![0.0; k];
                let mut dsigma_ds = vec![0.0; k];
                for c in 0..k {
                    let (m, live_m) = bounded(raw[k + c], -LOGIT_LIMIT, LOGIT_LIMIT);
                    mu[c] = sigmoid(m);
                    dmu_dm[c] = if live_m { mu[c] * (1.0 - mu[c]) } else { 0.0 };
                    let (s, live_s) = bounded(raw[2 * k + c], LOG_STD_MIN, LOG_STD_MAX);
                    let es = s.exp();
                    sigma[c] = SIGMA_MIN + es;
                    dsigma_ds[c] = if live_s { es } else { 0.0 };
                }

                let log_terms: Vec<f64> = (0..k)
                    .map(|c| log_w[c] + normal_log_pdf(x, mu[c], sigma[c]))
                    .collect();
                let lse = log_sum_exp(log_terms.iter().copied());
                for c in 0..k {
                    let r = (log_terms[c] - lse).exp();
                    let w = log_w[c].exp();
                    let diff = x - mu[c];
                    let s2 = sigma[c] * sigma[c];
                    grad[c] = if live_logit[c] { w - r } else { 0.0 };
                    grad[k + c] = -r * diff / s2 * dmu_dm[c];
                    grad[2 * k + c] = -r * (diff * diff / (s2 * sigma[c]) - 1.0 / sigma[c]) * dsigma_ds[c];
                }
                -lse
            }
        }
    }
}
