//! The training loop: sample, fit constants, score, rank, update.

use std::collections::{HashMap, HashSet};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use super::adam::Adam;
use super::objective::{objective, step_distributions, KlPenalty, ObjectiveSpec, Surrogate};
use super::{GradientKind, PolicyConfig};
use crate::actor::{checkpoint, Actor, ModelConfig};
use crate::const_opt::{fit_tree, LmConfig};
use crate::error::{Error, Result};
use crate::expr::{Expression, TokenLibrary};
use crate::rewards::{baseline_weights, quantile, quota, rank_map_with_quota, RewardData, RewardKind};
use crate::sampler::{log_prob, sample_batch, SampleConfig, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub policy: PolicyConfig,
    pub sample: SampleConfig,
    pub embed_dim: usize,
    pub ffn_dim: usize,
    pub layers: usize,
    pub dct_clip: usize,
    pub lm: LmConfig,
    pub reward: RewardKind,
    pub time_limit: Option<Duration>,
    /// Save parameters every this many epochs (0 disables).
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
    /// Keep every epoch's batch rewards in the result.
    pub record_rewards: bool,
}

impl TrainConfig {
    pub fn model_config(&self, library: &TokenLibrary) -> ModelConfig {
        ModelConfig {
            vocab: library.len(),
            embed_dim: self.embed_dim,
            ffn_dim: self.ffn_dim,
            layers: self.layers,
            dct_clip: self.dct_clip,
            max_len: self.sample.max_nodes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.policy.validate()?;
        self.sample.validate()?;
        self.lm.validate()
    }
}

/// A scored expression together with the trajectory that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub trajectory: Trajectory,
    pub expression: Expression,
    pub reward: f64,
    /// False when evaluation or constant fitting was poisoned.
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestExpression {
    pub expression: Expression,
    pub reward: f64,
    /// Zero-based epoch in which it was first sampled.
    pub epoch: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub best_reward: f64,
    pub r_alpha: f64,
    pub buffer_min: f64,
    pub entropy: f64,
    pub kl_mean: f64,
    pub clip_fraction: f64,
    pub positive_weights: usize,
    pub mean_reward: f64,
    pub std_reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub best: Option<BestExpression>,
    pub log: Vec<EpochLog>,
    /// Stopped early by the wall-clock limit.
    pub truncated: bool,
    pub skipped_steps: u64,
    pub epoch_rewards: Vec<Vec<f64>>,
    pub params: Vec<f64>,
}

impl TrainResult {
    /// No epoch ran, so there is no best expression.
    pub fn is_empty(&self) -> bool {
        self.best.is_none()
    }

    /// One-based epoch count until the final best expression appeared.
    pub fn epochs_to_best(&self) -> Option<usize> {
        self.best.as_ref().map(|b| b.epoch + 1)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    splitmix64(seed ^ splitmix64(epoch as u64 + 1))
}

const MEMO_LIMIT: usize = 200_000;

struct Scored {
    expression: Expression,
    reward: f64,
    valid: bool,
}

fn score(trajectory: &Trajectory, data: &RewardData, lm: &LmConfig, reward: &RewardKind) -> Scored {
    let (expression, fit) = fit_tree(&trajectory.tree, data.columns, data.y, lm);
    let valid = !fit.poisoned && expression.evaluate(data.columns).is_ok();
    let r = if valid { reward.score(&expression, data) } else { f64::NEG_INFINITY };
    Scored { expression, reward: if r.is_nan() { f64::NEG_INFINITY } else { r }, valid: valid && r.is_finite() }
}

/// Runs the full loop on `(columns, y)` and returns the best expression seen.
pub fn train(
    columns: &[Vec<f64>],
    y: &[f64],
    library: &TokenLibrary,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainResult> {
    config.validate()?;
    if columns.len() < library.variable_count() {
        return Err(Error::Config(format!(
            "library uses {} variables but the data has {} columns",
            library.variable_count(),
            columns.len()
        )));
    }
    let data = RewardData::new(columns, y)?;
    let actor = Actor::new(config.model_config(library))?;
    let pc = &config.policy;
    let mut params = actor.init_params(seed);
    let mut adam = Adam::new(params.len(), pc.learning_rate);
    let start = Instant::now();

    let batch = config.sample.batch;
    let quota_n = quota(pc.alpha, batch);
    let buffer_cap = quota_n.ceil() as usize;
    let scale = 100.0 / (pc.alpha * batch as f64);

    let mut memo: HashMap<Vec<usize>, Scored> = HashMap::new();
    let mut buffer: Vec<Candidate> = Vec::new();
    let mut best: Option<BestExpression> = None;
    let mut theta_ref = params.clone();
    let mut result = TrainResult {
        best: None,
        log: Vec::new(),
        truncated: false,
        skipped_steps: 0,
        epoch_rewards: Vec::new(),
        params: Vec::new(),
    };

    for epoch in 0..pc.epochs {
        if config.time_limit.is_some_and(|limit| start.elapsed() >= limit) {
            result.truncated = true;
            break;
        }
        if epoch % pc.ref_interval == 0 {
            theta_ref.clone_from(&params);
        }
        let theta_old = params.clone();

        let sampled = sample_batch(&actor, &params, library, &config.sample, epoch_seed(seed, epoch))?;

        // constant fitting and scoring, memoised by token sequence
        if memo.len() > MEMO_LIMIT {
            memo.clear();
        }
        let mut missing = Vec::new();
        let mut queued = HashSet::new();
        for t in &sampled {
            let key = t.tokens();
            if !memo.contains_key(&key) && queued.insert(key) {
                missing.push(t);
            }
        }
        let fresh: Vec<Scored> = missing
            .par_iter()
            .map(|t| score(t, &data, &config.lm, &config.reward))
            .collect();
        for (t, s) in missing.iter().zip(fresh) {
            memo.insert(t.tokens(), s);
        }

        let mut candidates: Vec<Candidate> = sampled
            .into_iter()
            .map(|t| {
                let s = &memo[&t.tokens()];
                Candidate { expression: s.expression.clone(), reward: s.reward, valid: s.valid, trajectory: t }
            })
            .collect();
        let batch_rewards: Vec<f64> = candidates.iter().map(|c| c.reward).collect();
        let in_batch: HashSet<Vec<usize>> = candidates.iter().map(|c| c.trajectory.tokens()).collect();
        candidates.extend(buffer.iter().filter(|c| !in_batch.contains(&c.trajectory.tokens())).cloned());

        let rewards: Vec<f64> = candidates.iter().map(|c| c.reward).collect();
        let r_alpha = quantile(&rewards, 1.0 - pc.alpha / 100.0);
        let mut weights = match pc.gradient {
            GradientKind::Baseline => baseline_weights(&rewards, pc.alpha).1,
            _ => rank_map_with_quota(&rewards, quota_n, pc.lambda),
        };
        for (w, c) in weights.iter_mut().zip(&candidates) {
            if !c.valid {
                *w = 0.0;
            }
        }

        // policy update on the positively weighted trajectories
        let selected: Vec<usize> = (0..candidates.len()).filter(|&i| weights[i] > 0.0).collect();
        let (mut entropy, mut kl_mean, mut clip_fraction) = (0.0, 0.0, 0.0);
        if !selected.is_empty() {
            let trajs: Vec<Trajectory> = selected.iter().map(|&i| candidates[i].trajectory.clone()).collect();
            let w: Vec<f64> = selected.iter().map(|&i| weights[i]).collect();
            let grpo = pc.gradient == GradientKind::Grpo;
            let old: Vec<Vec<f64>> = if grpo {
                trajs
                    .par_iter()
                    .map(|t| log_prob(&actor, &theta_old, t).map(|(_, per)| per))
                    .collect::<Result<_>>()?
            } else {
                Vec::new()
            };
            let reference: Vec<Vec<Vec<f64>>> = if grpo && pc.beta > 0.0 {
                trajs
                    .par_iter()
                    .map(|t| step_distributions(&actor, &theta_ref, t))
                    .collect::<Result<_>>()?
            } else {
                Vec::new()
            };
            let spec = ObjectiveSpec {
                weights: &w,
                scale,
                surrogate: if grpo { Surrogate::Clipped { eps: pc.epsilon, old: &old } } else { Surrogate::LogProb },
                kl: (grpo && pc.beta > 0.0).then_some(KlPenalty { beta: pc.beta, reference: &reference }),
                entropy_coef: pc.entropy_coef,
            };
            for _ in 0..pc.steps_per_epoch {
                let v = objective(&actor, &params, &trajs, &spec)?;
                entropy += v.entropy_mean;
                kl_mean += v.kl_mean;
                clip_fraction += v.clip_fraction;
                let loss_grad: Vec<f64> = v.grad.iter().map(|g| -g).collect();
                adam.step(&mut params, &loss_grad);
            }
            let c = pc.steps_per_epoch as f64;
            entropy /= c;
            kl_mean /= c;
            clip_fraction /= c;
        }

        // best-so-far and replay buffer
        let mut order: Vec<usize> = (0..candidates.len()).filter(|&i| candidates[i].valid).collect();
        order.sort_by(|&a, &b| candidates[b].reward.total_cmp(&candidates[a].reward).then(a.cmp(&b)));
        if let Some(&top) = order.first() {
            let c = &candidates[top];
            if best.as_ref().is_none_or(|b| c.reward > b.reward) {
                best = Some(BestExpression { expression: c.expression.clone(), reward: c.reward, epoch });
            }
        }
        let mut keep = HashSet::new();
        let mut next_buffer = Vec::with_capacity(buffer_cap);
        for &i in &order {
            if next_buffer.len() == buffer_cap {
                break;
            }
            if keep.insert(candidates[i].trajectory.tokens()) {
                next_buffer.push(candidates[i].clone());
            }
        }
        buffer = next_buffer;

        let finite: Vec<f64> = batch_rewards.iter().copied().filter(|r| r.is_finite()).collect();
        let (mean_reward, std_reward) = if finite.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let (m, v) = crate::rewards::mean_var(&finite);
            (m, v.sqrt())
        };
        result.log.push(EpochLog {
            epoch,
            best_reward: best.as_ref().map_or(f64::NEG_INFINITY, |b| b.reward),
            r_alpha,
            buffer_min: buffer.last().map_or(f64::NEG_INFINITY, |c| c.reward),
            entropy,
            kl_mean,
            clip_fraction,
            positive_weights: selected.len(),
            mean_reward,
            std_reward,
        });
        if config.record_rewards {
            result.epoch_rewards.push(batch_rewards);
        }
        if config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0 {
            if let Some(dir) = &config.checkpoint_dir {
                std::fs::create_dir_all(dir)?;
                checkpoint::save(&dir.join(format!("params_epoch{:04}.txt", epoch + 1)), actor.layout(), &params)?;
            }
        }
    }
    result.best = best;
    result.skipped_steps = adam.skipped;
    result.params = params;
    Ok(result)
}

pub const LOG_HEADER: &str = "epoch,best_reward,r_alpha,buffer_min,entropy,kl_mean,clip_fraction,positive_weights";

/// One CSV row per epoch.
pub fn write_log_csv(path: &Path, log: &[EpochLog]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{LOG_HEADER}")?;
    for e in log {
        writeln!(
            out,
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{}",
            e.epoch, e.best_reward, e.r_alpha, e.buffer_min, e.entropy, e.kl_mean, e.clip_fraction, e.positive_weights
        )?;
    }
    Ok(())
}
