//! Versioned `key = value` experiment configuration.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Duration;

use crate::const_opt::LmConfig;
use crate::error::{Error, Result};
use crate::expr::{Op, TokenLibrary};
use crate::policy::{GradientKind, PolicyConfig, TrainConfig};
use crate::rewards::{Likelihood, RewardKind};
use crate::sampler::{MaskRules, SampleConfig};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub problems: Vec<String>,
    pub seeds: Vec<u64>,
    pub noise_levels: Vec<f64>,
    pub train_points: usize,
    pub test_points: usize,
    /// Operator and constant tokens; variables are added per dataset.
    pub operators: Vec<String>,
    pub batch: usize,
    pub alpha: f64,
    pub learning_rate: f64,
    pub max_nodes: usize,
    pub oversampling: f64,
    pub epochs: usize,
    pub lambda: f64,
    pub entropy_coef: f64,
    pub layers: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub beta: f64,
    pub epsilon: f64,
    pub embed_dim: usize,
    pub dct_clip: usize,
    pub steps_per_epoch: usize,
    pub ref_interval: usize,
    pub gradient: GradientKind,
    pub reward: String,
    pub likelihood: String,
    pub student_dof: f64,
    pub spl_eta: f64,
    pub tpsr_lambda: f64,
    pub lm_iterations: usize,
    pub lm_damping: f64,
    pub lm_initial_constant: f64,
    pub rules: MaskRules,
    pub time_limit_s: Option<f64>,
    pub checkpoint_every: usize,
    pub test_fraction: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let p = PolicyConfig::default();
        Self {
            seed: 0,
            problems: Vec::new(),
            seeds: vec![0],
            noise_levels: vec![0.0],
            train_points: 100,
            test_points: 100,
            operators: ["+", "-", "*", "/", "^", "sin", "cos", "log", "sqrt", "exp", "c", "1"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            batch: 1000,
            alpha: p.alpha,
            learning_rate: p.learning_rate,
            max_nodes: 32,
            oversampling: 2.0,
            epochs: p.epochs,
            lambda: p.lambda,
            entropy_coef: p.entropy_coef,
            layers: 1,
            heads: 1,
            ffn_dim: 2048,
            beta: p.beta,
            epsilon: p.epsilon,
            embed_dim: 10,
            dct_clip: 8,
            steps_per_epoch: p.steps_per_epoch,
            ref_interval: p.ref_interval,
            gradient: GradientKind::Grpo,
            reward: "bic".into(),
            likelihood: "gaussian".into(),
            student_dof: 4.0,
            spl_eta: 0.99,
            tpsr_lambda: 0.1,
            lm_iterations: 50,
            lm_damping: 1.0,
            lm_initial_constant: 1.0,
            rules: MaskRules::default(),
            time_limit_s: None,
            checkpoint_every: 0,
            test_fraction: 0.25,
        }
    }
}

/// Every accepted key, in the order [`ExperimentConfig::to_text`] writes them.
pub const KEYS: &[&str] = &[
    "seed",
    "problems",
    "seeds",
    "noise_levels",
    "train_points",
    "test_points",
    "operators",
    "batch",
    "alpha",
    "learning_rate",
    "max_nodes",
    "oversampling",
    "epochs",
    "lambda",
    "entropy_coef",
    "layers",
    "heads",
    "ffn_dim",
    "beta",
    "epsilon",
    "embed_dim",
    "dct_clip",
    "steps_per_epoch",
    "ref_interval",
    "gradient",
    "reward",
    "likelihood",
    "student_dof",
    "spl_eta",
    "tpsr_lambda",
    "lm_iterations",
    "lm_damping",
    "lm_initial_constant",
    "rule_min_size",
    "rule_no_self_nesting",
    "rule_no_inverse_pairs",
    "rule_no_constant_only_children",
    "rule_node_budget",
    "time_limit_s",
    "checkpoint_every",
    "test_fraction",
];

fn bad(key: &str, value: &str, what: &str) -> Error {
    Error::Config(format!("key `{key}`: `{value}` is not {what}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str, what: &str) -> Result<T> {
    value.trim().parse().map_err(|_| bad(key, value, what))
}

fn list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(bad(key, value, "a boolean")),
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

impl ExperimentConfig {
    /// Applies one override. Unknown keys are rejected with the key name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        let v = value.trim();
        match key {
            "seed" => self.seed = num(key, v, "an unsigned integer")?,
            "problems" => self.problems = list(v),
            "seeds" => {
                self.seeds = list(v)
                    .iter()
                    .map(|s| num(key, s, "an unsigned integer"))
                    .collect::<Result<_>>()?
            }
            "noise_levels" => {
                self.noise_levels = list(v).iter().map(|s| num(key, s, "a number")).collect::<Result<_>>()?
            }
            "train_points" => self.train_points = num(key, v, "an unsigned integer")?,
            "test_points" => self.test_points = num(key, v, "an unsigned integer")?,
            "operators" => self.operators = list(v),
            "batch" => self.batch = num(key, v, "an unsigned integer")?,
            "alpha" => self.alpha = num(key, v, "a number")?,
            "learning_rate" => self.learning_rate = num(key, v, "a number")?,
            "max_nodes" => self.max_nodes = num(key, v, "an unsigned integer")?,
            "oversampling" => self.oversampling = num(key, v, "a number")?,
            "epochs" => self.epochs = num(key, v, "an unsigned integer")?,
            "lambda" => self.lambda = num(key, v, "a number")?,
            "entropy_coef" => self.entropy_coef = num(key, v, "a number")?,
            "layers" => self.layers = num(key, v, "an unsigned integer")?,
            "heads" => self.heads = num(key, v, "an unsigned integer")?,
            "ffn_dim" => self.ffn_dim = num(key, v, "an unsigned integer")?,
            "beta" => self.beta = num(key, v, "a number")?,
            "epsilon" => self.epsilon = num(key, v, "a number")?,
            "embed_dim" => self.embed_dim = num(key, v, "an unsigned integer")?,
            "dct_clip" => self.dct_clip = num(key, v, "an unsigned integer")?,
            "steps_per_epoch" => self.steps_per_epoch = num(key, v, "an unsigned integer")?,
            "ref_interval" => self.ref_interval = num(key, v, "an unsigned integer")?,
            "gradient" => {
                self.gradient = GradientKind::parse(v).ok_or_else(|| bad(key, v, "one of grpo, rank, baseline"))?
            }
            "reward" => {
                if !["bic", "nrmse", "spl", "tpsr"].contains(&v) {
                    return Err(bad(key, v, "one of bic, nrmse, spl, tpsr"));
                }
                self.reward = v.into();
            }
            "likelihood" => {
                if !["gaussian", "student_t"].contains(&v) {
                    return Err(bad(key, v, "one of gaussian, student_t"));
                }
                self.likelihood = v.into();
            }
            "student_dof" => self.student_dof = num(key, v, "a number")?,
            "spl_eta" => self.spl_eta = num(key, v, "a number")?,
            "tpsr_lambda" => self.tpsr_lambda = num(key, v, "a number")?,
            "lm_iterations" => self.lm_iterations = num(key, v, "an unsigned integer")?,
            "lm_damping" => self.lm_damping = num(key, v, "a number")?,
            "lm_initial_constant" => self.lm_initial_constant = num(key, v, "a number")?,
            "rule_min_size" => self.rules.min_size = flag(key, v)?,
            "rule_no_self_nesting" => self.rules.no_self_nesting = flag(key, v)?,
            "rule_no_inverse_pairs" => self.rules.no_inverse_pairs = flag(key, v)?,
            "rule_no_constant_only_children" => self.rules.no_constant_only_children = flag(key, v)?,
            "rule_node_budget" => self.rules.node_budget = flag(key, v)?,
            "time_limit_s" => {
                self.time_limit_s = match v {
                    "" | "none" => None,
                    _ => Some(num(key, v, "a number of seconds")?),
                }
            }
            "checkpoint_every" => self.checkpoint_every = num(key, v, "an unsigned integer")?,
            "test_fraction" => self.test_fraction = num(key, v, "a number")?,
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Parses a config file body. The optional `version` key must match.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            if key.trim() == "version" {
                let v: u32 = num("version", value, "an integer")?;
                if v != CONFIG_VERSION {
                    return Err(Error::Config(format!("unsupported config version {v}")));
                }
                continue;
            }
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads != 1 {
            return Err(Error::Config("only a single attention head is implemented".into()));
        }
        if self.train_points < 2 {
            return Err(Error::Config("train_points must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::Config("test_fraction must lie in [0, 1)".into()));
        }
        if self.noise_levels.iter().any(|n| !(*n >= 0.0)) {
            return Err(Error::Config("noise levels must be non-negative".into()));
        }
        if let Some(t) = self.time_limit_s {
            if !(t >= 0.0) {
                return Err(Error::Config("time_limit_s must be non-negative".into()));
            }
        }
        self.library(1)?;
        self.train_config()?.validate()
    }

    /// Token library for `variables` input columns.
    pub fn library(&self, variables: usize) -> Result<TokenLibrary> {
        let mut ops = Vec::new();
        let mut leaves = Vec::new();
        for s in &self.operators {
            let op = Op::from_symbol(s).ok_or_else(|| Error::Config(format!("key `operators`: unknown token `{s}`")))?;
            match op {
                Op::Var(_) => return Err(Error::Config("key `operators`: variables are added automatically".into())),
                Op::Const | Op::One => leaves.push(op),
                _ => ops.push(op),
            }
        }
        ops.extend((0..variables).map(Op::Var));
        ops.extend(leaves);
        TokenLibrary::new(&ops, variables).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn reward_kind(&self) -> RewardKind {
        match self.reward.as_str() {
            "nrmse" => RewardKind::Nrmse,
            "spl" => RewardKind::Spl { eta: self.spl_eta },
            "tpsr" => RewardKind::Tpsr { lambda: self.tpsr_lambda, max_len: self.max_nodes },
            _ => RewardKind::Bic(match self.likelihood.as_str() {
                "student_t" => Likelihood::StudentT { dof: self.student_dof },
                _ => Likelihood::Gaussian,
            }),
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        Ok(TrainConfig {
            policy: PolicyConfig {
                alpha: self.alpha,
                lambda: self.lambda,
                epsilon: self.epsilon,
                beta: self.beta,
                entropy_coef: self.entropy_coef,
                steps_per_epoch: self.steps_per_epoch,
                ref_interval: self.ref_interval,
                learning_rate: self.learning_rate,
                epochs: self.epochs,
                gradient: self.gradient,
            },
            sample: SampleConfig {
                batch: self.batch,
                oversampling: self.oversampling,
                max_nodes: self.max_nodes,
                rules: self.rules,
            },
            embed_dim: self.embed_dim,
            ffn_dim: self.ffn_dim,
            layers: self.layers,
            dct_clip: self.dct_clip,
            lm: LmConfig {
                max_iterations: self.lm_iterations,
                initial_damping: self.lm_damping,
                initial_constant: self.lm_initial_constant,
                ..LmConfig::default()
            },
            reward: self.reward_kind(),
            time_limit: self.time_limit_s.map(Duration::from_secs_f64),
            checkpoint_every: self.checkpoint_every,
            checkpoint_dir: None,
            record_rewards: true,
        })
    }

    /// Canonical text form; `parse(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let mut s = format!("version = {CONFIG_VERSION}\n");
        let r = &self.rules;
        let values: Vec<String> = vec![
            self.seed.to_string(),
            join(&self.problems),
            join(&self.seeds),
            self.noise_levels.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(", "),
            self.train_points.to_string(),
            self.test_points.to_string(),
            join(&self.operators),
            self.batch.to_string(),
            format!("{:?}", self.alpha),
            format!("{:?}", self.learning_rate),
            self.max_nodes.to_string(),
            format!("{:?}", self.oversampling),
            self.epochs.to_string(),
            format!("{:?}", self.lambda),
            format!("{:?}", self.entropy_coef),
            self.layers.to_string(),
            self.heads.to_string(),
            self.ffn_dim.to_string(),
            format!("{:?}", self.beta),
            format!("{:?}", self.epsilon),
            self.embed_dim.to_string(),
            self.dct_clip.to_string(),
            self.steps_per_epoch.to_string(),
            self.ref_interval.to_string(),
            self.gradient.name().into(),
            self.reward.clone(),
            self.likelihood.clone(),
            format!("{:?}", self.student_dof),
            format!("{:?}", self.spl_eta),
            format!("{:?}", self.tpsr_lambda),
            self.lm_iterations.to_string(),
            format!("{:?}", self.lm_damping),
            format!("{:?}", self.lm_initial_constant),
            r.min_size.to_string(),
            r.no_self_nesting.to_string(),
            r.no_inverse_pairs.to_string(),
            r.no_constant_only_children.to_string(),
            r.node_budget.to_string(),
            self.time_limit_s.map_or("none".into(), |t| format!("{t:?}")),
            self.checkpoint_every.to_string(),
            format!("{:?}", self.test_fraction),
        ];
        for (k, v) in KEYS.iter().zip(values) {
            writeln!(s, "{k} = {v}").unwrap();
        }
        s
    }
}
