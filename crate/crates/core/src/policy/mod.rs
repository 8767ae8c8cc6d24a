//! Policy optimisation: objectives, optimizer and the training loop.

pub mod adam;
pub mod objective;
pub mod train;

pub use adam::Adam;
pub use objective::{
    baseline_risk_grad, objective, rank_mapped_grad, risk_quantile, step_distributions, KlPenalty, ObjectiveSpec,
    ObjectiveValue, Surrogate,
};
pub use train::{train, BestExpression, Candidate, EpochLog, TrainConfig, TrainResult};

use crate::error::{Error, Result};

/// Which estimator drives the parameter update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientKind {
    /// Clipped ratio objective with KL penalty and rank-mapped weights.
    Grpo,
    /// Plain score-function gradient with rank-mapped weights.
    RankMapped,
    /// Score-function gradient weighted by `R - R_alpha` over the top quantile.
    Baseline,
}

impl GradientKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "grpo" => Some(Self::Grpo),
            "rank" | "rank_mapped" => Some(Self::RankMapped),
            "baseline" => Some(Self::Baseline),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Grpo => "grpo",
            Self::RankMapped => "rank",
            Self::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    /// Percent of the batch treated as the top tail.
    pub alpha: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub beta: f64,
    pub entropy_coef: f64,
    /// Optimizer steps per epoch.
    pub steps_per_epoch: usize,
    /// Epochs between reference snapshot refreshes.
    pub ref_interval: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub gradient: GradientKind,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            alpha: 5.0,
            lambda: 0.2,
            epsilon: 0.2,
            beta: 0.01,
            entropy_coef: 0.005,
            steps_per_epoch: 5,
            ref_interval: 5,
            learning_rate: 1e-4,
            epochs: 600,
            gradient: GradientKind::Grpo,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 100.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 100], got {}", self.alpha)));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::Config("lambda must be positive".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Config(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        if !(self.beta >= 0.0) || !(self.entropy_coef >= 0.0) {
            return Err(Error::Config("beta and the entropy coefficient must be non-negative".into()));
        }
        if self.steps_per_epoch == 0 || self.ref_interval == 0 {
            return Err(Error::Config("steps per epoch and reference interval must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}
