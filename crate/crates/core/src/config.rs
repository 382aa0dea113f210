//! Experiment configuration: JSON schema, validation, and assembly of
//! objectives, plans, and simulator clients.

use crate::error::{BqError, Result};
use crate::planner::{self, Plan};
use crate::privacy::{ClientDataProfile, PrivacySpec};
use crate::sim::objective::{generate_synthetic, LogisticObjective, Objective, SyntheticTask};
use crate::sim::{self, idx, ClientConfig, TrainingConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Quadratic,
    Logistic,
    IdxLogistic,
}

fn default_spread() -> f64 {
    1.0
}

fn default_margin() -> f64 {
    2.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub kind: ObjectiveKind,
    /// Feature dimension (synthetic kinds).
    #[serde(default)]
    pub dimension: Option<usize>,
    /// Total sample count across all clients (synthetic kinds).
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub data_seed: u64,
    #[serde(default = "default_spread")]
    pub spread: f64,
    #[serde(default = "default_margin")]
    pub margin: f64,
    /// IDX image/label files (idx_logistic).
    #[serde(default)]
    pub images: Option<PathBuf>,
    #[serde(default)]
    pub labels: Option<PathBuf>,
    /// Two class labels mapped to +1/-1 (idx_logistic), default (0, 1).
    #[serde(default)]
    pub classes: Option<(u8, u8)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientSpec {
    pub id: u32,
    pub weight: f64,
    pub batch_size: usize,
    pub bit_budget: u32,
    pub epsilon: f64,
    pub delta: f64,
    /// Privacy accounting dimension; defaults to the model dimension. The
    /// override supports effective-dimension accounting.
    #[serde(default)]
    pub privacy_dimension: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSpec {
    pub learning_rate: f64,
    pub rounds: u64,
    pub clip_bound: f64,
    pub master_seed: u64,
    /// Gradient-norm evaluation cadence; 0 picks 1 for quadratic and 10
    /// otherwise.
    #[serde(default)]
    pub eval_every: u64,
    #[serde(default)]
    pub theta0: Option<Vec<f64>>,
}

/// Codec parameters for the standalone noise report.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodecSpec {
    pub clip_bound: f64,
    pub quant_level: u32,
    pub noise_trials: u32,
    #[serde(default = "default_q_num")]
    pub q_num: u32,
    #[serde(default = "default_q_den")]
    pub q_den: u32,
}

fn default_q_num() -> u32 {
    1
}

fn default_q_den() -> u32 {
    2
}

/// One experiment, one file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub objective: ObjectiveConfig,
    pub clients: Vec<ClientSpec>,
    pub training: TrainingSpec,
    #[serde(default)]
    pub codec: Option<CodecSpec>,
    #[serde(default)]
    pub write_traces: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.clients.is_empty() {
            return Err(BqError::InvalidConfig("clients: need at least one".into()));
        }
        let weight_sum: f64 = self.clients.iter().map(|c| c.weight).sum();
        if (weight_sum - 1.0).abs() > 1e-9 {
            return Err(BqError::InvalidConfig(format!(
                "clients.weight: must sum to 1, got {weight_sum}"
            )));
        }
        for c in &self.clients {
            if !(c.weight > 0.0 && c.weight <= 1.0) {
                return Err(BqError::InvalidConfig(format!(
                    "clients[{}].weight: must lie in (0, 1], got {}",
                    c.id, c.weight
                )));
            }
            if c.batch_size == 0 {
                return Err(BqError::InvalidConfig(format!(
                    "clients[{}].batch_size: must be >= 1",
                    c.id
                )));
            }
            PrivacySpec::new(c.epsilon, c.delta).map_err(|e| {
                BqError::InvalidConfig(format!("clients[{}]: {e}", c.id))
            })?;
        }
        let t = &self.training;
        if !(t.learning_rate.is_finite() && t.learning_rate >= 0.0) {
            return Err(BqError::InvalidConfig(format!(
                "training.learning_rate: must be nonnegative, got {}",
                t.learning_rate
            )));
        }
        if t.rounds == 0 {
            return Err(BqError::InvalidConfig("training.rounds: must be >= 1".into()));
        }
        if !(t.clip_bound.is_finite() && t.clip_bound > 0.0) {
            return Err(BqError::InvalidConfig(format!(
                "training.clip_bound: must be positive, got {}",
                t.clip_bound
            )));
        }
        match self.objective.kind {
            ObjectiveKind::Quadratic | ObjectiveKind::Logistic => {
                let o = &self.objective;
                let dim = o.dimension.ok_or_else(|| {
                    BqError::InvalidConfig("objective.dimension: required for synthetic kinds".into())
                })?;
                let samples = o.samples.ok_or_else(|| {
                    BqError::InvalidConfig("objective.samples: required for synthetic kinds".into())
                })?;
                if dim == 0 || samples == 0 {
                    return Err(BqError::InvalidConfig(
                        "objective.dimension and objective.samples must be >= 1".into(),
                    ));
                }
            }
            ObjectiveKind::IdxLogistic => {
                if self.objective.images.is_none() {
                    return Err(BqError::InvalidConfig(
                        "objective.images: required for idx_logistic".into(),
                    ));
                }
                if self.objective.labels.is_none() {
                    return Err(BqError::InvalidConfig(
                        "objective.labels: required for idx_logistic".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Build the objective (loads/generates the dataset).
    pub fn build_objective(&self) -> Result<Box<dyn Objective>> {
        let o = &self.objective;
        match o.kind {
            ObjectiveKind::Quadratic => generate_synthetic(
                SyntheticTask::Quadratic { spread: o.spread },
                o.dimension.unwrap(),
                o.samples.unwrap(),
                o.data_seed,
            ),
            ObjectiveKind::Logistic => generate_synthetic(
                SyntheticTask::Logistic { margin: o.margin },
                o.dimension.unwrap(),
                o.samples.unwrap(),
                o.data_seed,
            ),
            ObjectiveKind::IdxLogistic => {
                let ds = idx::load_idx_dataset(
                    o.images.as_ref().unwrap(),
                    o.labels.as_ref().unwrap(),
                )?;
                let (pos, neg) = o.classes.unwrap_or((0, 1));
                let (features, labels) = ds.binary_subset(pos, neg)?;
                let dim = ds.dimension + 1;
                Ok(Box::new(LogisticObjective::new(features, labels, dim)?))
            }
        }
    }

    /// Dataset shape (model dimension, total samples) without materializing
    /// synthetic data. IDX files are read.
    pub fn objective_shape(&self) -> Result<(usize, usize)> {
        let o = &self.objective;
        match o.kind {
            ObjectiveKind::Quadratic | ObjectiveKind::Logistic => {
                Ok((o.dimension.unwrap(), o.samples.unwrap()))
            }
            ObjectiveKind::IdxLogistic => {
                let ds = idx::load_idx_dataset(
                    o.images.as_ref().unwrap(),
                    o.labels.as_ref().unwrap(),
                )?;
                let (pos, neg) = o.classes.unwrap_or((0, 1));
                let count = ds
                    .labels
                    .iter()
                    .filter(|&&l| l == pos || l == neg)
                    .count();
                Ok((ds.dimension + 1, count))
            }
        }
    }

    /// Accounting profile for one client given its partition size and the
    /// model dimension.
    pub fn client_profile(
        &self,
        spec: &ClientSpec,
        partition_size: usize,
        model_dim: usize,
    ) -> Result<ClientDataProfile> {
        ClientDataProfile::new(
            partition_size as u64,
            spec.batch_size as u64,
            spec.privacy_dimension.unwrap_or(model_dim as u64),
        )
    }

    /// Solve every client's plan. Infeasible plans are returned, not errors,
    /// so callers can report all of them.
    pub fn solve_plans(&self) -> Result<Vec<Plan>> {
        let (model_dim, n) = self.objective_shape()?;
        let sizes = sim::partition_sizes(n, self.clients.len());
        if self.clients.len() > n {
            return Err(BqError::InvalidConfig(format!(
                "clients: {} clients cannot split {n} samples",
                self.clients.len()
            )));
        }
        self.clients
            .iter()
            .zip(&sizes)
            .map(|(c, &size)| {
                if c.batch_size > size {
                    return Err(BqError::InvalidConfig(format!(
                        "clients[{}].batch_size: {} exceeds partition size {size}",
                        c.id, c.batch_size
                    )));
                }
                let profile = self.client_profile(c, size, model_dim)?;
                let spec = PrivacySpec::new(c.epsilon, c.delta)?;
                Ok(planner::solve(&profile, &spec, c.bit_budget))
            })
            .collect()
    }

    /// Assemble simulator clients (partitions the data deterministically).
    pub fn build_clients(&self, n_samples: usize, plans: &[Plan]) -> Result<Vec<ClientConfig>> {
        let partitions = sim::partition_data(
            n_samples,
            self.clients.len(),
            self.training.master_seed,
        )?;
        Ok(self
            .clients
            .iter()
            .zip(plans)
            .zip(partitions)
            .map(|((c, plan), partition)| ClientConfig {
                id: c.id,
                weight: c.weight,
                batch_size: c.batch_size,
                privacy: PrivacySpec {
                    epsilon_target: c.epsilon,
                    delta_target: c.delta,
                },
                plan: *plan,
                partition,
            })
            .collect())
    }

    /// Simulator config with the CLI-facing knobs resolved.
    pub fn training_config(&self, threads: usize) -> TrainingConfig {
        let eval_every = if self.training.eval_every > 0 {
            self.training.eval_every
        } else if self.objective.kind == ObjectiveKind::Quadratic {
            1
        } else {
            10
        };
        TrainingConfig {
            learning_rate: self.training.learning_rate,
            rounds: self.training.rounds,
            clip_bound: self.training.clip_bound,
            master_seed: self.training.master_seed,
            eval_every,
            threads,
            theta0: self.training.theta0.clone(),
            collect_traces: self.write_traces,
        }
    }
}
