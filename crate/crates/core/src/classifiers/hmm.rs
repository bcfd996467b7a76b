//! Gaussian hidden Markov models, one per class, trained by Baum-Welch.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Feature, Label};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmmParams {
    pub states: usize,
    pub max_iterations: usize,
    /// Stop once the per-observation log-likelihood gain drops below this.
    pub tolerance: f64,
    pub variance_floor: f64,
    pub max_retries: usize,
}

impl Default for HmmParams {
    fn default() -> Self {
        HmmParams { states: 3, max_iterations: 200, tolerance: 1e-6, variance_floor: 1e-4, max_retries: 3 }
    }
}

impl HmmParams {
    pub fn validate(&self) -> Result<()> {
        if self.states == 0 || self.max_iterations == 0 {
            return Err(Error::Config("hmm states and max_iterations must be positive".into()));
        }
        if !(self.variance_floor > 0.0) || !(self.tolerance >= 0.0) {
            return Err(Error::Config("hmm variance_floor must be positive and tolerance non-negative".into()));
        }
        Ok(())
    }
}

const STARVATION: f64 = 1e-8;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmModel {
    pub pi: Vec<f64>,
    /// Row-stochastic, `a[i][j]` = P(next = j | current = i).
    pub a: Vec<Vec<f64>>,
    pub means: Vec<Feature>,
    pub variances: Vec<Feature>,
    /// Total training log-likelihood before each M-step since the last re-initialisation.
    pub log_likelihood_trace: Vec<f64>,
    pub reinitialisations: usize,
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

impl HmmModel {
    pub fn states(&self) -> usize {
        self.pi.len()
    }

    pub fn log_emission(&self, state: usize, x: &Feature) -> f64 {
        let m = &self.means[state];
        let v = &self.variances[state];
        -0.5 * (0..3).map(|k| LN_2PI + v[k].ln() + (x[k] - m[k]).powi(2) / v[k]).sum::<f64>()
    }

    /// Forward-algorithm log-likelihood, computed in log space.
    pub fn log_likelihood(&self, seq: &[Feature]) -> f64 {
        let n = self.states();
        let Some(first) = seq.first() else { return 0.0 };
        let log_a: Vec<Vec<f64>> = self.a.iter().map(|r| r.iter().map(|p| p.ln()).collect()).collect();
        let mut alpha: Vec<f64> = (0..n).map(|i| self.pi[i].ln() + self.log_emission(i, first)).collect();
        let mut next = vec![0.0; n];
        let mut terms = vec![0.0; n];
        for x in &seq[1..] {
            for j in 0..n {
                for i in 0..n {
                    terms[i] = alpha[i] + log_a[i][j];
                }
                next[j] = log_sum_exp(&terms) + self.log_emission(j, x);
            }
            std::mem::swap(&mut alpha, &mut next);
        }
        log_sum_exp(&alpha)
    }

    /// Baum-Welch over all `sequences`, which share one class.
    pub fn fit(sequences: &[&[Feature]], params: &HmmParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let data: Vec<&Feature> = sequences.iter().flat_map(|s| s.iter()).collect();
        let n = params.states;
        if sequences.is_empty() || data.len() < n {
            return Err(Error::Precondition(format!(
                "hmm training needs at least one sequence and {n} observations, got {} sequence(s) with {} observation(s)",
                sequences.len(),
                data.len()
            )));
        }
        if data.iter().any(|x| x.iter().any(|v| !v.is_finite())) {
            return Err(Error::Precondition("hmm training data contains non-finite values".into()));
        }
        let mut rng = stream(seed, Purpose::Init, 0);
        let global_var = {
            let t = data.len() as f64;
            let mean: Feature = std::array::from_fn(|k| data.iter().map(|x| x[k]).sum::<f64>() / t);
            let var: Feature = std::array::from_fn(|k| {
                (data.iter().map(|x| (x[k] - mean[k]).powi(2)).sum::<f64>() / t).max(params.variance_floor)
            });
            var
        };
        let mut model = HmmModel {
            pi: vec![1.0 / n as f64; n],
            a: (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| match (n, i == j) {
                            (1, _) => 1.0,
                            (_, true) => 0.8,
                            _ => 0.2 / (n - 1) as f64,
                        })
                        .collect()
                })
                .collect(),
            means: kmeanspp(&data, n, &mut rng),
            variances: vec![global_var; n],
            log_likelihood_trace: Vec::new(),
            reinitialisations: 0,
        };
        let total_obs = data.len() as f64;
        let mut stats = Stats::new(n);
        for _ in 0..params.max_iterations {
            stats.clear();
            let mut ll = 0.0;
            for seq in sequences.iter().filter(|s| !s.is_empty()) {
                ll += model.expect(seq, &mut stats)?;
            }
            if let Some(&prev) = model.log_likelihood_trace.last() {
                if (ll - prev) / total_obs < params.tolerance {
                    model.log_likelihood_trace.push(ll);
                    break;
                }
            }
            model.log_likelihood_trace.push(ll);
            let starved: Vec<usize> = (0..n).filter(|&i| stats.occupancy[i] < STARVATION).collect();
            if !starved.is_empty() {
                if model.reinitialisations >= params.max_retries {
                    return Err(Error::StateStarvation { retries: model.reinitialisations });
                }
                model.reinitialisations += 1;
                for i in starved {
                    model.means[i] = *data[rng.random_range(0..data.len())];
                    model.variances[i] = global_var;
                }
                model.log_likelihood_trace.clear();
                continue;
            }
            model.maximise(&stats, params.variance_floor);
        }
        Ok(model)
    }

    /// Scaled forward-backward on one sequence; adds expected counts to `stats`.
    fn expect(&self, seq: &[Feature], stats: &mut Stats) -> Result<f64> {
        let n = self.states();
        let t_len = seq.len();
        let mut e = vec![0.0; t_len * n];
        let mut shift = vec![0.0; t_len];
        for (t, x) in seq.iter().enumerate() {
            let row = &mut e[t * n..(t + 1) * n];
            for (i, v) in row.iter_mut().enumerate() {
                *v = self.log_emission(i, x);
            }
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row.iter_mut().for_each(|v| *v = (*v - m).exp());
            shift[t] = m;
        }
        let mut alpha = vec![0.0; t_len * n];
        let mut scale = vec![0.0; t_len];
        let mut ll = 0.0;
        for t in 0..t_len {
            let mut c = 0.0;
            for j in 0..n {
                let prior = if t == 0 {
                    self.pi[j]
                } else {
                    (0..n).map(|i| alpha[(t - 1) * n + i] * self.a[i][j]).sum()
                };
                alpha[t * n + j] = prior * e[t * n + j];
                c += alpha[t * n + j];
            }
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::NonFiniteLikelihood("training sequence".into()));
            }
            alpha[t * n..(t + 1) * n].iter_mut().for_each(|v| *v /= c);
            scale[t] = c;
            ll += c.ln() + shift[t];
        }
        let mut beta = vec![1.0; t_len * n];
        for t in (0..t_len - 1).rev() {
            for i in 0..n {
                beta[t * n + i] = (0..n)
                    .map(|j| self.a[i][j] * e[(t + 1) * n + j] * beta[(t + 1) * n + j])
                    .sum::<f64>()
                    / scale[t + 1];
            }
        }
        for t in 0..t_len {
            for i in 0..n {
                let g = alpha[t * n + i] * beta[t * n + i];
                if t == 0 {
                    stats.pi[i] += g;
                }
                stats.occupancy[i] += g;
                for k in 0..3 {
                    stats.sum[i][k] += g * seq[t][k];
                    stats.sum_sq[i][k] += g * seq[t][k] * seq[t][k];
                }
                if t + 1 < t_len {
                    let w = alpha[t * n + i] / scale[t + 1];
                    for j in 0..n {
                        stats.trans[i][j] += w * self.a[i][j] * e[(t + 1) * n + j] * beta[(t + 1) * n + j];
                    }
                }
            }
        }
        stats.sequences += 1;
        Ok(ll)
    }

    fn maximise(&mut self, s: &Stats, floor: f64) {
        let n = self.states();
        for i in 0..n {
            self.pi[i] = s.pi[i] / s.sequences as f64;
            let out: f64 = s.trans[i].iter().sum();
            if out > 0.0 {
                for j in 0..n {
                    self.a[i][j] = s.trans[i][j] / out;
                }
            }
            let occ = s.occupancy[i];
            for k in 0..3 {
                let mean = s.sum[i][k] / occ;
                self.means[i][k] = mean;
                self.variances[i][k] = (s.sum_sq[i][k] / occ - mean * mean).max(floor);
            }
        }
    }
}

struct Stats {
    pi: Vec<f64>,
    trans: Vec<Vec<f64>>,
    occupancy: Vec<f64>,
    sum: Vec<Feature>,
    sum_sq: Vec<Feature>,
    sequences: usize,
}

impl Stats {
    fn new(n: usize) -> Self {
        Stats {
            pi: vec![0.0; n],
            trans: vec![vec![0.0; n]; n],
            occupancy: vec![0.0; n],
            sum: vec![[0.0; 3]; n],
            sum_sq: vec![[0.0; 3]; n],
            sequences: 0,
        }
    }

    fn clear(&mut self) {
        *self = Stats::new(self.pi.len());
    }
}

/// k-means++ seeding: each further centre is drawn with probability proportional to D².
fn kmeanspp<R: Rng>(data: &[&Feature], n: usize, rng: &mut R) -> Vec<Feature> {
    let d2 = |a: &Feature, b: &Feature| (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>();
    let mut centres = vec![*data[rng.random_range(0..data.len())]];
    let mut best: Vec<f64> = data.iter().map(|x| d2(x, &centres[0])).collect();
    while centres.len() < n {
        let total: f64 = best.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random_range(0.0..total);
            let mut chosen = data.len() - 1;
            for (i, b) in best.iter().enumerate() {
                if r < *b {
                    chosen = i;
                    break;
                }
                r -= b;
            }
            chosen
        } else {
            rng.random_range(0..data.len())
        };
        let c = *data[pick];
        for (b, x) in best.iter_mut().zip(data) {
            *b = b.min(d2(x, &c));
        }
        centres.push(c);
    }
    centres
}

/// One model per class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmClassifier {
    pub models: Vec<HmmModel>,
}

impl HmmClassifier {
    /// `sequences[c]` holds the training sequences of class `c`.
    pub fn fit(sequences: &[Vec<&[Feature]>], params: &HmmParams, seed: u64) -> Result<Self> {
        let models = sequences
            .iter()
            .enumerate()
            .map(|(c, seqs)| HmmModel::fit(seqs, params, crate::rng::derive_seed(seed, Purpose::Model, c as u64)))
            .collect::<Result<_>>()?;
        Ok(HmmClassifier { models })
    }

    /// Class whose model gives the highest log-likelihood; ties go to the smaller label.
    pub fn classify(&self, seq: &[Feature]) -> Result<Label> {
        let mut best: Option<(Label, f64)> = None;
        for (c, m) in self.models.iter().enumerate() {
            let ll = m.log_likelihood(seq);
            if !ll.is_finite() {
                return Err(Error::NonFiniteLikelihood(format!("class {c}")));
            }
            if best.map_or(true, |(_, b)| ll > b) {
                best = Some((c, ll));
            }
        }
        best.map(|(c, _)| c).ok_or_else(|| Error::Precondition("hmm classifier has no models".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn toy(n: usize, rng: &mut ChaCha8Rng) -> HmmModel {
        let mut pi: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let s: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|p| *p /= s);
        let a = (0..n)
            .map(|_| {
                let mut r: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
                let s: f64 = r.iter().sum();
                r.iter_mut().for_each(|p| *p /= s);
                r
            })
            .collect();
        HmmModel {
            pi,
            a,
            means: (0..n).map(|_| [0, 1, 2].map(|_| rng.random_range(-2.0..2.0))).collect(),
            variances: (0..n).map(|_| [0, 1, 2].map(|_| rng.random_range(0.3..2.0))).collect(),
            log_likelihood_trace: vec![],
            reinitialisations: 0,
        }
    }

    fn brute_force(m: &HmmModel, seq: &[Feature]) -> f64 {
        let n = m.states();
        let paths = n.pow(seq.len() as u32);
        let mut total = 0.0;
        for code in 0..paths {
            let mut c = code;
            let mut path = Vec::new();
            for _ in 0..seq.len() {
                path.push(c % n);
                c /= n;
            }
            let mut p = m.pi[path[0]] * m.log_emission(path[0], &seq[0]).exp();
            for t in 1..seq.len() {
                p *= m.a[path[t - 1]][path[t]] * m.log_emission(path[t], &seq[t]).exp();
            }
            total += p;
        }
        total.ln()
    }

    #[test]
    fn forward_matches_path_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in [2, 3] {
            for t in 1..=5 {
                let m = toy(n, &mut rng);
                let seq: Vec<Feature> = (0..t).map(|_| [0, 1, 2].map(|_| rng.random_range(-2.0..2.0))).collect();
                assert!((m.log_likelihood(&seq) - brute_force(&m, &seq)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn single_state_is_gaussian_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let seqs: Vec<Vec<Feature>> =
            (0..4).map(|_| (0..30).map(|_| [0, 1, 2].map(|_| rng.random_range(-3.0..5.0))).collect()).collect();
        let refs: Vec<&[Feature]> = seqs.iter().map(|s| s.as_slice()).collect();
        let m = HmmModel::fit(&refs, &HmmParams { states: 1, ..Default::default() }, 1).unwrap();
        let all: Vec<&Feature> = seqs.iter().flatten().collect();
        for k in 0..3 {
            let mean = all.iter().map(|x| x[k]).sum::<f64>() / all.len() as f64;
            assert!((m.means[0][k] - mean).abs() < 1e-9);
        }
        assert!((m.pi[0] - 1.0).abs() < 1e-12 && (m.a[0][0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn recovers_two_state_generator() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut seqs = Vec::new();
        for _ in 0..20 {
            let mut s = usize::from(rng.random_bool(0.5));
            let mut seq = Vec::new();
            for _ in 0..100 {
                let mu = if s == 0 { -3.0 } else { 3.0 };
                seq.push([mu + noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng)]);
                if rng.random_bool(0.1) {
                    s = 1 - s;
                }
            }
            seqs.push(seq);
        }
        let refs: Vec<&[Feature]> = seqs.iter().map(|s| s.as_slice()).collect();
        let m = HmmModel::fit(&refs, &HmmParams { states: 2, ..Default::default() }, 3).unwrap();
        let (lo, hi) = if m.means[0][0] < m.means[1][0] { (0, 1) } else { (1, 0) };
        assert!((m.means[lo][0] + 3.0).abs() < 0.2 && (m.means[hi][0] - 3.0).abs() < 0.2, "{:?}", m.means);
        assert!((m.a[lo][lo] - 0.9).abs() < 0.1 && (m.a[hi][hi] - 0.9).abs() < 0.1, "{:?}", m.a);
        for i in 0..2 {
            assert!((m.a[i].iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert!((m.pi.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn likelihood_dominance_picks_matching_model() {
        let unit = |mu: f64| HmmModel {
            pi: vec![1.0],
            a: vec![vec![1.0]],
            means: vec![[mu; 3]],
            variances: vec![[1.0; 3]],
            log_likelihood_trace: vec![],
            reinitialisations: 0,
        };
        let c = HmmClassifier { models: vec![unit(-1.0), unit(1.0)] };
        assert_eq!(c.classify(&[[1.0; 3]; 10]).unwrap(), 1);
        // exact tie goes to the smaller label
        assert_eq!(c.classify(&[[0.0; 3]; 4]).unwrap(), 0);
    }

    #[test]
    fn length_one_matches_mixture_likelihood() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let c = HmmClassifier { models: vec![toy(3, &mut rng), toy(2, &mut rng)] };
            let x = [0, 1, 2].map(|_| rng.random_range(-3.0..3.0));
            let mix = |m: &HmmModel| (0..m.states()).map(|i| m.pi[i] * m.log_emission(i, &x).exp()).sum::<f64>();
            let want = usize::from(mix(&c.models[1]) > mix(&c.models[0]));
            assert_eq!(c.classify(&[x]).unwrap(), want);
        }
    }
}
