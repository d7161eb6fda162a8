//! Surrogate model: an MLP over concatenated (policy, task) embeddings that
//! predicts outcome distribution parameters for every pair.
//!
//! Continuous outcomes use a Gaussian-mixture head trained with the mixture
//! negative log-likelihood; binary outcomes use a single logit trained with
//! cross-entropy. Dropout stays available at inference time so that repeated
//! stochastic passes act as samples of the parameters.

mod head;
mod network;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use head::Head;
pub use network::{Adam, Dense, DropoutMasks, Mlp};

use crate::dist::DistributionParams;
use crate::error::{Error, Result};
use crate::seed::{self, stream};
use crate::types::{EvalDataset, OutcomeKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateConfig {
    pub hidden_sizes: Vec<usize>,
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub epochs_initial: usize,
    pub epochs_per_update: usize,
    /// Mixture components for continuous outcomes.
    pub components: usize,
    pub outcome_kind: OutcomeKind,
    pub seed: u64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![128, 128],
            dropout_rate: 0.1,
            learning_rate: 1e-3,
            epochs_initial: 100,
            epochs_per_update: 20,
            components: 2,
            outcome_kind: OutcomeKind::Continuous,
            seed: 0,
        }
    }
}

impl SurrogateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidConfig(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        if self.components == 0 {
            return Err(Error::InvalidConfig("mixture needs at least one component".into()));
        }
        if self.epochs_initial == 0 || self.epochs_per_update == 0 {
            return Err(Error::InvalidConfig("epoch counts must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(Error::InvalidConfig("hidden layers must be non-empty".into()));
        }
        Ok(())
    }

    pub fn head(&self) -> Head {
        match self.outcome_kind {
            OutcomeKind::Binary => Head::Bernoulli,
            OutcomeKind::Continuous => Head::Mixture {
                components: self.components,
            },
        }
    }
}

/// Policy and task embeddings indexed by campaign position. Used both as fixed
/// inputs and, for the learned ("optimal") representation, as trainable parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub policy_embeddings: Vec<Vec<f64>>,
    pub task_embeddings: Vec<Vec<f64>>,
}

pub type LearnedEmbeddingTable = EmbeddingTable;

impl EmbeddingTable {
    pub fn new(policy_embeddings: Vec<Vec<f64>>, task_embeddings: Vec<Vec<f64>>) -> Result<Self> {
        let check = |vs: &[Vec<f64>]| -> Result<usize> {
            let d = vs.first().map_or(0, Vec::len);
            match vs.iter().find(|v| v.len() != d) {
                Some(bad) => Err(Error::DimensionMismatch {
                    expected: d,
                    found: bad.len(),
                }),
                None => Ok(d),
            }
        };
        check(&policy_embeddings)?;
        check(&task_embeddings)?;
        Ok(Self {
            policy_embeddings,
            task_embeddings,
        })
    }

    pub fn num_policies(&self) -> usize {
        self.policy_embeddings.len()
    }

    pub fn num_tasks(&self) -> usize {
        self.task_embeddings.len()
    }

    pub fn policy_dim(&self) -> usize {
        self.policy_embeddings.first().map_or(0, Vec::len)
    }

    pub fn task_dim(&self) -> usize {
        self.task_embeddings.first().map_or(0, Vec::len)
    }

    pub fn input_dim(&self) -> usize {
        self.policy_dim() + self.task_dim()
    }

    /// Input rows for the given `(policy, task)` pairs.
    pub fn inputs(&self, pairs: impl ExactSizeIterator<Item = (usize, usize)>) -> Array2<f64> {
        let (dp, dt) = (self.policy_dim(), self.task_dim());
        let mut x = Array2::zeros((pairs.len(), dp + dt));
        for (mut row, (i, j)) in x.outer_iter_mut().zip(pairs) {
            for (dst, src) in row.iter_mut().zip(self.policy_embeddings[i].iter().chain(&self.task_embeddings[j])) {
                *dst = *src;
            }
        }
        x
    }

    /// Input rows for every pair, policy-major (`row = i * N + j`).
    pub fn all_pair_inputs(&self) -> Array2<f64> {
        let n = self.num_tasks();
        self.inputs((0..self.num_policies() * n).map(|r| (r / n, r % n)))
    }

    fn scaled(mut self, factor: f64) -> Self {
        self.policy_embeddings
            .iter_mut()
            .chain(self.task_embeddings.iter_mut())
            .flatten()
            .for_each(|v| *v *= factor);
        self
    }

    fn random(num_policies: usize, policy_dim: usize, num_tasks: usize, task_dim: usize, s: u64) -> Self {
        let mut rng = seed::rng(s);
        let mut draw = |rows: usize, dim: usize| -> Vec<Vec<f64>> {
            (0..rows)
                .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
                .collect()
        };
        let policy_embeddings = draw(num_policies, policy_dim);
        let task_embeddings = draw(num_tasks, task_dim);
        Self {
            policy_embeddings,
            task_embeddings,
        }
    }
}

/// Negative log-likelihood of one outcome: mixture NLL or binary cross-entropy.
pub fn loss(params: &DistributionParams, x: f64) -> f64 {
    -params.log_likelihood(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    config: SurrogateConfig,
    head: Head,
    net: Mlp,
    optimizer: Adam,
    /// Total epochs run so far; selects the dropout stream of the next epoch.
    epochs_trained: u64,
}

impl SurrogateModel {
    pub fn new(config: SurrogateConfig, input_dim: usize) -> Result<Self> {
        config.validate()?;
        let head = config.head();
        let mut rng = seed::rng(seed::derive(config.seed, &[stream::INIT]));
        let net = Mlp::new(input_dim, &config.hidden_sizes, head.width(), &mut rng);
        let optimizer = Adam::new(config.learning_rate, net.num_parameters());
        Ok(Self {
            config,
            head,
            net,
            optimizer,
            epochs_trained: 0,
        })
    }

    pub fn config(&self) -> &SurrogateConfig {
        &self.config
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn network(&self) -> &Mlp {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn epochs_trained(&self) -> u64 {
        self.epochs_trained
    }

    pub fn parameters(&self) -> Vec<f64> {
        self.net.flatten()
    }

    pub fn set_parameters(&mut self, flat: &[f64]) {
        self.net.load_flat(flat);
    }

    fn check_input(&self, width: usize) -> Result<()> {
        if width != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: width,
            });
        }
        Ok(())
    }

    fn concat(&self, e_policy: &[f64], e_task: &[f64]) -> Result<Array2<f64>> {
        self.check_input(e_policy.len() + e_task.len())?;
        let row: Vec<f64> = e_policy.iter().chain(e_task).copied().collect();
        Ok(Array2::from_shape_vec((1, row.len()), row).expect("row shape"))
    }

    fn decode_rows(&self, out: &Array2<f64>) -> Vec<DistributionParams> {
        out.outer_iter()
            .map(|row| self.head.decode(row.as_slice().expect("standard layout")))
            .collect()
    }

    /// Deterministic prediction (dropout off) for a batch of input rows.
    pub fn predict_batch(&self, inputs: ArrayView2<f64>) -> Result<Vec<DistributionParams>> {
        self.check_input(inputs.ncols())?;
        Ok(self.decode_rows(&self.net.forward(inputs, None).0))
    }

    pub fn predict_params(&self, e_policy: &[f64], e_task: &[f64]) -> Result<DistributionParams> {
        let x = self.concat(e_policy, e_task)?;
        Ok(self.predict_batch(x.view())?.remove(0))
    }

    /// Dropout-off predictions for every pair, policy-major.
    pub fn predict_grid(&self, table: &EmbeddingTable) -> Result<Vec<DistributionParams>> {
        self.predict_batch(table.all_pair_inputs().view())
    }

    /// `samples` stochastic passes over a batch; result is indexed `[row][sample]`.
    pub fn mc_sample_batch(
        &self,
        inputs: ArrayView2<f64>,
        samples: usize,
        sample_seed: u64,
    ) -> Result<Vec<Vec<DistributionParams>>> {
        self.check_input(inputs.ncols())?;
        if samples == 0 {
            return Err(Error::TooFewSamples { needed: 1, got: 0 });
        }
        let rows = inputs.nrows();
        let mut out: Vec<Vec<DistributionParams>> = (0..rows).map(|_| Vec::with_capacity(samples)).collect();
        for s in 0..samples {
            let mut rng = seed::rng(seed::derive(sample_seed, &[s as u64]));
            let masks = self.net.sample_masks(rows, self.config.dropout_rate, &mut rng);
            let (raw, _) = self.net.forward(inputs, masks);
            for (slot, params) in out.iter_mut().zip(self.decode_rows(&raw)) {
                slot.push(params);
            }
        }
        Ok(out)
    }

    pub fn mc_sample_params(
        &self,
        e_policy: &[f64],
        e_task: &[f64],
        samples: usize,
        sample_seed: u64,
    ) -> Result<Vec<DistributionParams>> {
        let x = self.concat(e_policy, e_task)?;
        Ok(self.mc_sample_batch(x.view(), samples, sample_seed)?.remove(0))
    }

    /// MC-dropout samples for every pair, policy-major, `[pair][sample]`.
    pub fn mc_sample_grid(
        &self,
        table: &EmbeddingTable,
        samples: usize,
        sample_seed: u64,
    ) -> Result<Vec<Vec<DistributionParams>>> {
        self.mc_sample_batch(table.all_pair_inputs().view(), samples, sample_seed)
    }

    /// Mean loss over a batch and its gradient w.r.t. every network parameter
    /// (flattened in [`Self::parameters`] order) and w.r.t. the inputs.
    pub fn loss_and_gradient(
        &self,
        inputs: ArrayView2<f64>,
        targets: &[f64],
        masks: Option<DropoutMasks>,
    ) -> (f64, Vec<f64>, Array2<f64>) {
        let (loss, grads, d_input) = self.backprop(inputs, targets, masks);
        (loss, grads.flatten(), d_input)
    }

    fn backprop(
        &self,
        inputs: ArrayView2<f64>,
        targets: &[f64],
        masks: Option<DropoutMasks>,
    ) -> (f64, network::Gradients, Array2<f64>) {
        let n = targets.len();
        let (raw, cache) = self.net.forward(inputs, masks);
        let mut d_out = Array2::zeros(raw.dim());
        let mut total = 0.0;
        for ((row, mut grad), &x) in raw.outer_iter().zip(d_out.outer_iter_mut()).zip(targets) {
            let grad = grad.as_slice_mut().expect("standard layout");
            total += self.head.nll_with_grad(row.as_slice().expect("standard layout"), x, grad);
        }
        d_out /= n as f64;
        let (grads, d_input) = self.net.backward(&cache, d_out);
        (total / n as f64, grads, d_input)
    }

    fn epoch_masks(&mut self, rows: usize) -> Option<DropoutMasks> {
        let mut rng = seed::rng(seed::derive(self.config.seed, &[stream::TRAIN, self.epochs_trained]));
        self.epochs_trained += 1;
        self.net.sample_masks(rows, self.config.dropout_rate, &mut rng)
    }

    /// Full-batch training on `dataset`, continuing from the current weights.
    /// Returns the mean loss of each epoch (measured before its update).
    pub fn train_epochs(&mut self, dataset: &EvalDataset, table: &EmbeddingTable, epochs: usize) -> Result<Vec<f64>> {
        if dataset.is_empty() {
            return Err(Error::EmptyDataset);
        }
        self.check_input(table.input_dim())?;
        let records = dataset.records();
        let inputs = table.inputs(records.iter().map(|r| (r.policy_index, r.task_index)));
        let targets: Vec<f64> = records.iter().map(|r| r.outcome).collect();
        let mut trace = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            let masks = self.epoch_masks(inputs.nrows());
            let (loss, grads, _) = self.backprop(inputs.view(), &targets, masks);
            self.optimizer.update(
                self.net.params_mut(),
                grads.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied()),
            );
            trace.push(loss);
        }
        Ok(trace)
    }
}

/// Settings for learning embedding tables from a complete offline dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimalFit {
    pub epochs: usize,
    /// Adam step size for the embedding table (the network uses its own).
    pub table_learning_rate: f64,
    /// Reference outcomes per pair used for fitting; 0 uses all.
    pub samples_per_pair: usize,
    /// Std of the initial table entries.
    pub init_scale: f64,
}

impl Default for OptimalFit {
    fn default() -> Self {
        Self {
            epochs: 300,
            table_learning_rate: 1e-2,
            samples_per_pair: 10,
            init_scale: 0.01,
        }
    }
}

impl OptimalFit {
    pub fn with_epochs(epochs: usize, table_learning_rate: f64) -> Self {
        Self {
            epochs,
            table_learning_rate,
            ..Self::default()
        }
    }
}

/// Learns policy and task embeddings jointly with a fresh surrogate on a complete
/// offline dataset. The learned table serves as an upper-bound representation.
pub fn fit_optimal_embeddings(
    full_dataset: &EvalDataset,
    cfg: &SurrogateConfig,
    num_policies: usize,
    num_tasks: usize,
    (policy_dim, task_dim): (usize, usize),
    fit: &OptimalFit,
) -> Result<(LearnedEmbeddingTable, SurrogateModel)> {
    if full_dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(r) = full_dataset
        .records()
        .iter()
        .find(|r| r.policy_index >= num_policies || r.task_index >= num_tasks)
    {
        return Err(Error::InvalidConfig(format!(
            "record references pair ({}, {}) outside {num_policies}x{num_tasks}",
            r.policy_index, r.task_index
        )));
    }
    let mut table = EmbeddingTable::random(
        num_policies,
        policy_dim,
        num_tasks,
        task_dim,
        seed::derive(cfg.seed, &[stream::INIT, 1]),
    )
    .scaled(fit.init_scale);
    let mut model = SurrogateModel::new(cfg.clone(), policy_dim + task_dim)?;
    let mut table_opt = Adam::new(fit.table_learning_rate, (num_policies * policy_dim) + (num_tasks * task_dim));

    let records = full_dataset.records();
    let targets: Vec<f64> = records.iter().map(|r| r.outcome).collect();
    for _ in 0..fit.epochs {
        let inputs = table.inputs(records.iter().map(|r| (r.policy_index, r.task_index)));
        let masks = model.epoch_masks(inputs.nrows());
        let (_, grads, d_input) = model.backprop(inputs.view(), &targets, masks);
        model.optimizer.update(
            model.net.params_mut(),
            grads.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied()),
        );

        let mut d_policy = vec![vec![0.0; policy_dim]; num_policies];
        let mut d_task = vec![vec![0.0; task_dim]; num_tasks];
        for (row, r) in d_input.outer_iter().zip(records) {
            let (dp, dt) = row.as_slice().expect("standard layout").split_at(policy_dim);
            d_policy[r.policy_index].iter_mut().zip(dp).for_each(|(a, b)| *a += b);
            d_task[r.task_index].iter_mut().zip(dt).for_each(|(a, b)| *a += b);
        }
        table_opt.update(
            table
                .policy_embeddings
                .iter_mut()
                .chain(table.task_embeddings.iter_mut())
                .flatten(),
            d_policy.into_iter().chain(d_task).flatten(),
        );
    }
    Ok((table, model))
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;

    use super::*;

    fn small_cfg(kind: OutcomeKind) -> SurrogateConfig {
        SurrogateConfig {
            hidden_sizes: vec![16, 16],
            outcome_kind: kind,
            ..SurrogateConfig::default()
        }
    }

    fn table(m: usize, n: usize, d: usize) -> EmbeddingTable {
        EmbeddingTable::random(m, d, n, d, 42)
    }

    #[test]
    fn fresh_model_predicts_valid_params_deterministically() {
        for kind in [OutcomeKind::Binary, OutcomeKind::Continuous] {
            let model = SurrogateModel::new(small_cfg(kind), 8).unwrap();
            let t = table(3, 4, 4);
            let a = model.predict_grid(&t).unwrap();
            assert_eq!(a.len(), 12);
            assert!(a.iter().all(|p| p.validate().is_ok()));
            assert_eq!(a, model.predict_grid(&t).unwrap());
        }
    }

    #[test]
    fn zero_output_layer_gives_coin_flip() {
        let mut model = SurrogateModel::new(small_cfg(OutcomeKind::Binary), 4).unwrap();
        let last = model.network_mut().layers.last_mut().unwrap();
        last.weights.fill(0.0);
        last.bias.fill(0.0);
        let p = model.predict_params(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(p, DistributionParams::Bernoulli { p: 0.5 });
    }

    #[test]
    fn dimension_mismatch() {
        let model = SurrogateModel::new(small_cfg(OutcomeKind::Binary), 4).unwrap();
        assert!(matches!(
            model.predict_params(&[1.0], &[1.0]),
            Err(Error::DimensionMismatch { expected: 4, found: 2 })
        ));
    }

    #[test]
    fn mc_samples_without_dropout_equal_point_prediction() {
        let cfg = SurrogateConfig {
            dropout_rate: 0.0,
            ..small_cfg(OutcomeKind::Continuous)
        };
        let model = SurrogateModel::new(cfg, 4).unwrap();
        let point = model.predict_params(&[0.1, 0.2], &[0.3, 0.4]).unwrap();
        let samples = model.mc_sample_params(&[0.1, 0.2], &[0.3, 0.4], 10, 7).unwrap();
        assert!(samples.iter().all(|s| *s == point));
    }

    #[test]
    fn mc_samples_are_seeded() {
        let model = SurrogateModel::new(small_cfg(OutcomeKind::Continuous), 4).unwrap();
        let a = model.mc_sample_params(&[0.1, 0.2], &[0.3, 0.4], 10, 7).unwrap();
        let b = model.mc_sample_params(&[0.1, 0.2], &[0.3, 0.4], 10, 7).unwrap();
        assert_eq!(a, b);
        let c = model.mc_sample_params(&[0.1, 0.2], &[0.3, 0.4], 10, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn trained_model_has_mc_spread() {
        let cfg = SurrogateConfig {
            hidden_sizes: vec![32, 32],
            ..SurrogateConfig::default()
        };
        let t = table(2, 2, 4);
        let ds = EvalDataset::from_outcomes(
            OutcomeKind::Continuous,
            [(0, 0, 0.9), (0, 0, 0.8), (1, 1, 0.1), (1, 0, 0.5), (0, 1, 0.3)],
        )
        .unwrap();
        let mut model = SurrogateModel::new(cfg, 8).unwrap();
        model.train_epochs(&ds, &t, 50).unwrap();
        let samples = model
            .mc_sample_params(&t.policy_embeddings[0], &t.task_embeddings[0], 10, 3)
            .unwrap();
        let means: Vec<f64> = samples.iter().map(DistributionParams::mean).collect();
        let avg = means.iter().sum::<f64>() / 10.0;
        let var = means.iter().map(|m| (m - avg).powi(2)).sum::<f64>() / 10.0;
        assert!(var > 0.0);
    }

    #[test]
    fn loss_values() {
        let g = DistributionParams::gaussian(0.3, 1.0).unwrap();
        assert_abs_diff_eq!(loss(&g, 0.3), 0.918_938_533_204_672_8, epsilon = 1e-12);
        let coin = DistributionParams::bernoulli(0.5).unwrap();
        assert_abs_diff_eq!(loss(&coin, 0.0), std::f64::consts::LN_2, epsilon = 1e-12);
        let two = DistributionParams::mixture(vec![0.3, 0.7], vec![0.2, 0.8], vec![0.05, 0.1]).unwrap();
        assert_abs_diff_eq!(loss(&two, 0.75), -0.901_971_615_850_640_6, epsilon = 1e-12);
    }

    #[test]
    fn training_reduces_loss() {
        let t = table(1, 1, 4);
        let ds = EvalDataset::from_outcomes(OutcomeKind::Continuous, [(0, 0, 0.7); 5]).unwrap();
        let mut model = SurrogateModel::new(small_cfg(OutcomeKind::Continuous), 8).unwrap();
        let trace = model.train_epochs(&ds, &t, 200).unwrap();
        assert_eq!(trace.len(), 200);
        assert!(trace[199] < trace[0]);
    }

    #[test]
    fn zero_epochs_leave_model_unchanged() {
        let t = table(1, 1, 4);
        let ds = EvalDataset::from_outcomes(OutcomeKind::Binary, [(0, 0, 1.0)]).unwrap();
        let mut model = SurrogateModel::new(small_cfg(OutcomeKind::Binary), 8).unwrap();
        let before = model.clone();
        assert!(model.train_epochs(&ds, &t, 0).unwrap().is_empty());
        assert_eq!(model, before);
        let empty = EvalDataset::new(OutcomeKind::Binary);
        assert!(matches!(model.train_epochs(&empty, &t, 1), Err(Error::EmptyDataset)));
    }

    #[test]
    fn training_is_bit_reproducible() {
        let t = table(2, 3, 4);
        let ds = EvalDataset::from_outcomes(OutcomeKind::Continuous, [(0, 0, 0.2), (1, 2, 0.9), (1, 1, 0.4)]).unwrap();
        let run = || {
            let mut m = SurrogateModel::new(small_cfg(OutcomeKind::Continuous), 8).unwrap();
            let trace = m.train_epochs(&ds, &t, 30).unwrap();
            (trace, m.parameters())
        };
        let (ta, pa) = run();
        let (tb, pb) = run();
        assert_eq!(ta, tb);
        assert!(pa.iter().zip(&pb).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let t = table(2, 2, 4);
        let ds = EvalDataset::from_outcomes(OutcomeKind::Continuous, [(0, 1, 0.25), (1, 0, 0.75)]).unwrap();
        let mut model = SurrogateModel::new(small_cfg(OutcomeKind::Continuous), 8).unwrap();
        model.train_epochs(&ds, &t, 5).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: SurrogateModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, model);
    }

    fn finite_difference_check(kind: OutcomeKind) {
        let cfg = small_cfg(kind);
        let model = SurrogateModel::new(cfg, 6).unwrap();
        let t = table(2, 2, 3);
        let inputs = t.inputs([(0, 0), (0, 1), (1, 0), (1, 1)].into_iter());
        let targets = match kind {
            OutcomeKind::Binary => vec![1.0, 0.0, 1.0, 1.0],
            OutcomeKind::Continuous => vec![0.2, 0.85, 0.5, 0.05],
        };
        let masks = model.network().sample_masks(4, 0.1, &mut seed::rng(1));
        let (_, grad, _) = model.loss_and_gradient(inputs.view(), &targets, masks.clone());
        let base = model.parameters();
        let h = 1e-5;
        let mut probe = model.clone();
        for i in 0..base.len() {
            let mut p = base.clone();
            p[i] += h;
            probe.set_parameters(&p);
            let up = probe.loss_and_gradient(inputs.view(), &targets, masks.clone()).0;
            p[i] -= 2.0 * h;
            probe.set_parameters(&p);
            let down = probe.loss_and_gradient(inputs.view(), &targets, masks.clone()).0;
            let fd = (up - down) / (2.0 * h);
            let denom = fd.abs().max(grad[i].abs()).max(1e-6);
            assert!((fd - grad[i]).abs() / denom < 1e-4, "param {i}: analytic {} vs fd {fd}", grad[i]);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        finite_difference_check(OutcomeKind::Binary);
        finite_difference_check(OutcomeKind::Continuous);
    }

    #[test]
    fn optimal_embeddings_zero_epochs_return_initial_table() {
        let ds = EvalDataset::from_outcomes(OutcomeKind::Binary, [(0, 0, 1.0)]).unwrap();
        let cfg = small_cfg(OutcomeKind::Binary);
        let init = EmbeddingTable::random(1, 4, 1, 4, seed::derive(cfg.seed, &[stream::INIT, 1])).scaled(OptimalFit::default().init_scale);
        let (t0, _) = fit_optimal_embeddings(&ds, &cfg, 1, 1, (4, 4), &OptimalFit::with_epochs(0, 1e-2)).unwrap();
        assert_eq!(t0, init);
        let (t1, _) = fit_optimal_embeddings(&ds, &cfg, 1, 1, (4, 4), &OptimalFit::with_epochs(1, 1e-2)).unwrap();
        assert_ne!(t1, init, "one epoch moves the table");
    }

    #[test]
    fn optimal_embeddings_fit_single_pair_mean() {
        let outcomes: Vec<(usize, usize, f64)> = [0.55, 0.6, 0.65, 0.7, 0.6].iter().map(|&x| (0, 0, x)).collect();
        let ds = EvalDataset::from_outcomes(OutcomeKind::Continuous, outcomes).unwrap();
        let cfg = SurrogateConfig {
            learning_rate: 3e-3,
            ..small_cfg(OutcomeKind::Continuous)
        };
        let (table, model) = fit_optimal_embeddings(&ds, &cfg, 1, 1, (4, 4), &OptimalFit::with_epochs(800, 3e-3)).unwrap();
        let pred = model.predict_grid(&table).unwrap()[0].mean();
        assert!((pred - 0.62).abs() < 0.05, "predicted mean {pred}");
    }

    fn mean_loss(model: &SurrogateModel, table: &EmbeddingTable, ds: &EvalDataset) -> f64 {
        let grid = model.predict_grid(table).unwrap();
        let n = table.num_tasks();
        let total: f64 = ds
            .records()
            .iter()
            .map(|r| loss(&grid[r.policy_index * n + r.task_index], r.outcome))
            .sum();
        total / ds.len() as f64
    }

    #[test]
    fn optimal_embeddings_fit_at_least_as_well_as_random_ones() {
        // Two tasks with identical outcome pools; the policies differ.
        let mut outcomes = Vec::new();
        for (i, pool) in [[0.2, 0.25, 0.3, 0.22], [0.7, 0.8, 0.75, 0.72]].iter().enumerate() {
            for j in 0..2 {
                outcomes.extend(pool.iter().map(|&x| (i, j, x)));
            }
        }
        let ds = EvalDataset::from_outcomes(OutcomeKind::Continuous, outcomes).unwrap();
        let fit = OptimalFit::default();
        let (mut opt_sum, mut rand_sum) = (0.0, 0.0);
        for seed in 0..3 {
            let cfg = SurrogateConfig {
                seed,
                ..small_cfg(OutcomeKind::Continuous)
            };
            let (opt_table, opt_model) = fit_optimal_embeddings(&ds, &cfg, 2, 2, (4, 4), &fit).unwrap();
            let rand_table = EmbeddingTable::random(2, 4, 2, 4, seed::derive(seed, &[stream::INIT, 1]));
            let mut rand_model = SurrogateModel::new(cfg, 8).unwrap();
            rand_model.train_epochs(&ds, &rand_table, fit.epochs).unwrap();
            opt_sum += mean_loss(&opt_model, &opt_table, &ds);
            rand_sum += mean_loss(&rand_model, &rand_table, &ds);
        }
        // Paired over three seeds, compared on the mean.
        assert!(opt_sum <= rand_sum, "optimal {} vs random {}", opt_sum / 3.0, rand_sum / 3.0);
    }

    #[test]
    fn inputs_are_concatenated_rows() {
        let t = EmbeddingTable::new(vec![vec![1.0], vec![2.0]], vec![vec![10.0, 11.0]]).unwrap();
        let x = t.all_pair_inputs();
        assert_eq!(x, Array2::from_shape_vec((2, 3), vec![1.0, 10.0, 11.0, 2.0, 10.0, 11.0]).unwrap());
    }
}
