//! Policy-gradient objectives and their exact gradients.
//!
//! Every term is a function of the per-step masked log-softmax, so each one
//! reduces to a gradient with respect to the step's logits which is then
//! pushed through the generator's reverse pass.

use rayon::prelude::*;

use crate::actor::Actor;
use crate::error::{Error, Result};
use crate::rewards::{baseline_weights, quantile, rank_map};
use crate::sampler::{masked_log_softmax, step_context, Trajectory};

/// How the per-step score enters the objective.
#[derive(Debug, Clone, Copy)]
pub enum Surrogate<'a> {
    /// `log p(token)`: the plain score-function estimator.
    LogProb,
    /// `min(g, clip(g, 1 - eps, 1 + eps))` with `g = p / p_old`; `old`
    /// holds per-step log-probabilities under the old parameters.
    Clipped { eps: f64, old: &'a [Vec<f64>] },
}

/// KL penalty towards reference distributions (per-step masked
/// log-softmax vectors).
#[derive(Debug, Clone, Copy)]
pub struct KlPenalty<'a> {
    pub beta: f64,
    pub reference: &'a [Vec<Vec<f64>>],
}

#[derive(Debug, Clone, Copy)]
pub struct ObjectiveSpec<'a> {
    /// Per-trajectory weights (rank-mapped or baseline differences).
    pub weights: &'a [f64],
    /// Multiplies both the surrogate and the KL sum, `100 / (alpha * B)`.
    pub scale: f64,
    pub surrogate: Surrogate<'a>,
    pub kl: Option<KlPenalty<'a>>,
    /// Coefficient on the mean per-step entropy.
    pub entropy_coef: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveValue {
    /// Value being maximised.
    pub objective: f64,
    /// Gradient of `objective` with respect to the parameters.
    pub grad: Vec<f64>,
    pub kl_mean: f64,
    pub entropy_mean: f64,
    /// Fraction of steps whose probability ratio lies outside the clip band.
    pub clip_fraction: f64,
    pub steps: usize,
}

#[derive(Default)]
struct Partial {
    surrogate: f64,
    kl: f64,
    entropy: f64,
    clipped: usize,
    steps: usize,
}

/// Per-step masked log-softmax vectors of a stored trajectory.
pub fn step_distributions(actor: &Actor, params: &[f64], trajectory: &Trajectory) -> Result<Vec<Vec<f64>>> {
    let tokens = trajectory.tokens();
    let positions = trajectory.positions();
    (0..tokens.len())
        .map(|j| {
            let fwd = actor.forward(params, &step_context(j, &tokens, &positions))?;
            Ok(masked_log_softmax(&fwd.logits, trajectory.masks[j]))
        })
        .collect()
}

fn check_lengths(trajectories: &[Trajectory], spec: &ObjectiveSpec) -> Result<()> {
    let n = trajectories.len();
    if spec.weights.len() != n {
        return Err(Error::Contract(format!("{} weights for {n} trajectories", spec.weights.len())));
    }
    if let Surrogate::Clipped { eps, old } = spec.surrogate {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Config(format!("clip width must lie in (0, 1), got {eps}")));
        }
        if old.len() != n || old.iter().zip(trajectories).any(|(o, t)| o.len() != t.len()) {
            return Err(Error::Contract("old log-probabilities do not match the trajectories".into()));
        }
    }
    if let Some(kl) = spec.kl {
        if kl.reference.len() != n || kl.reference.iter().zip(trajectories).any(|(r, t)| r.len() != t.len()) {
            return Err(Error::Contract("reference distributions do not match the trajectories".into()));
        }
    }
    Ok(())
}

fn trajectory_term(
    actor: &Actor,
    params: &[f64],
    index: usize,
    trajectory: &Trajectory,
    spec: &ObjectiveSpec,
    entropy_scale: f64,
) -> Result<(Partial, Vec<f64>)> {
    let tokens = trajectory.tokens();
    let positions = trajectory.positions();
    let vocab = actor.config().vocab;
    let mut grad = vec![0.0; params.len()];
    let mut part = Partial::default();
    let w = spec.weights[index] * spec.scale;
    for j in 0..tokens.len() {
        let ctx = step_context(j, &tokens, &positions);
        let fwd = actor.forward(params, &ctx)?;
        let lp = masked_log_softmax(&fwd.logits, trajectory.masks[j]);
        let p: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
        let a = tokens[j];
        if lp[a] == f64::NEG_INFINITY {
            return Err(Error::Contract(format!("token {a} at step {j} is masked out")));
        }
        let mut dlogits = vec![0.0; vocab];

        // score term: coefficient on (onehot - p)
        let coef = match spec.surrogate {
            Surrogate::LogProb => {
                part.surrogate += w * lp[a];
                w
            }
            Surrogate::Clipped { eps, old } => {
                let g = (lp[a] - old[index][j]).exp();
                if g > 1.0 + eps || g < 1.0 - eps {
                    part.clipped += 1;
                }
                if g > 1.0 + eps {
                    part.surrogate += w * (1.0 + eps);
                    0.0
                } else {
                    part.surrogate += w * g;
                    w * g
                }
            }
        };
        if coef != 0.0 {
            for b in 0..vocab {
                dlogits[b] -= coef * p[b];
            }
            dlogits[a] += coef;
        }

        if let Some(kl) = spec.kl {
            let q = &kl.reference[index][j];
            if q.len() != vocab {
                return Err(Error::Contract("reference distribution has the wrong width".into()));
            }
            let mut d = 0.0;
            for b in 0..vocab {
                if p[b] > 0.0 {
                    if q[b] == f64::NEG_INFINITY {
                        return Err(Error::Contract(format!("mask mismatch with the reference at step {j}")));
                    }
                    d += p[b] * (lp[b] - q[b]);
                }
            }
            part.kl += d;
            let c = spec.scale * kl.beta;
            for b in 0..vocab {
                if p[b] > 0.0 {
                    dlogits[b] -= c * p[b] * (lp[b] - q[b] - d);
                }
            }
        }

        let h: f64 = -(0..vocab).filter(|&b| p[b] > 0.0).map(|b| p[b] * lp[b]).sum::<f64>();
        part.entropy += h;
        if entropy_scale != 0.0 {
            for b in 0..vocab {
                if p[b] > 0.0 {
                    dlogits[b] -= entropy_scale * p[b] * (lp[b] + h);
                }
            }
        }
        part.steps += 1;

        if dlogits.iter().any(|&v| v != 0.0) {
            actor.backward(params, &ctx, &fwd, &dlogits, &mut grad);
        }
    }
    Ok((part, grad))
}

/// Objective value and gradient over `trajectories`. The per-trajectory
/// gradients are computed in parallel and summed in input order.
pub fn objective(
    actor: &Actor,
    params: &[f64],
    trajectories: &[Trajectory],
    spec: &ObjectiveSpec,
) -> Result<ObjectiveValue> {
    check_lengths(trajectories, spec)?;
    let total_steps: usize = trajectories.iter().map(Trajectory::len).sum();
    let entropy_scale = if total_steps > 0 { spec.entropy_coef / total_steps as f64 } else { 0.0 };
    let parts: Vec<(Partial, Vec<f64>)> = trajectories
        .par_iter()
        .enumerate()
        .map(|(i, t)| trajectory_term(actor, params, i, t, spec, entropy_scale))
        .collect::<Result<_>>()?;

    let mut grad = vec![0.0; params.len()];
    let mut sum = Partial::default();
    for (p, g) in &parts {
        for (acc, v) in grad.iter_mut().zip(g) {
            *acc += v;
        }
        sum.surrogate += p.surrogate;
        sum.kl += p.kl;
        sum.entropy += p.entropy;
        sum.clipped += p.clipped;
        sum.steps += p.steps;
    }
    let steps = sum.steps.max(1) as f64;
    let beta = spec.kl.map_or(0.0, |k| k.beta);
    let objective = sum.surrogate - spec.scale * beta * sum.kl + spec.entropy_coef * sum.entropy / steps;
    Ok(ObjectiveValue {
        objective,
        grad,
        kl_mean: sum.kl / steps,
        entropy_mean: sum.entropy / steps,
        clip_fraction: sum.clipped as f64 / steps,
        steps: sum.steps,
    })
}

/// `1/(alpha B/100) * sum (R - R_alpha) 1[R >= R_alpha] grad log p`.
pub fn baseline_risk_grad(
    actor: &Actor,
    params: &[f64],
    trajectories: &[Trajectory],
    rewards: &[f64],
    alpha: f64,
) -> Result<ObjectiveValue> {
    let (_, weights) = baseline_weights(rewards, alpha);
    objective(
        actor,
        params,
        trajectories,
        &ObjectiveSpec {
            weights: &weights,
            scale: 100.0 / (alpha * rewards.len() as f64),
            surrogate: Surrogate::LogProb,
            kl: None,
            entropy_coef: 0.0,
        },
    )
}

/// Score-function gradient with rank-mapped weights.
pub fn rank_mapped_grad(
    actor: &Actor,
    params: &[f64],
    trajectories: &[Trajectory],
    rewards: &[f64],
    alpha: f64,
    lambda: f64,
) -> Result<ObjectiveValue> {
    let weights = rank_map(rewards, alpha, lambda);
    objective(
        actor,
        params,
        trajectories,
        &ObjectiveSpec {
            weights: &weights,
            scale: 100.0 / (alpha * rewards.len() as f64),
            surrogate: Surrogate::LogProb,
            kl: None,
            entropy_coef: 0.0,
        },
    )
}

/// The `(1 - alpha/100)` reward quantile used by the baseline estimator.
pub fn risk_quantile(rewards: &[f64], alpha: f64) -> f64 {
    quantile(rewards, 1.0 - alpha / 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actor::ModelConfig;
    use crate::expr::TokenLibrary;
    use crate::sampler::{log_prob, sample_batch, MaskRules, SampleConfig};

    fn setup() -> (Actor, Vec<f64>, Vec<Trajectory>) {
        let lib = TokenLibrary::from_symbols(&["+", "*", "sin", "x1", "c", "1"], 1).unwrap();
        let actor = Actor::new(ModelConfig { vocab: 6, embed_dim: 4, ffn_dim: 8, layers: 1, dct_clip: 3, max_len: 6 }).unwrap();
        let params = actor.init_params(4);
        let cfg = SampleConfig { batch: 6, oversampling: 2.0, max_nodes: 6, rules: MaskRules::default() };
        let trajs = sample_batch(&actor, &params, &lib, &cfg, 9).unwrap();
        (actor, params, trajs)
    }

    #[test]
    fn ratio_one_matches_score_gradient() {
        let (actor, params, trajs) = setup();
        let old: Vec<Vec<f64>> = trajs.iter().map(|t| log_prob(&actor, &params, t).unwrap().1).collect();
        let w = [1.0, 0.5, 0.2, 0.0, 0.0, 0.3];
        let base = ObjectiveSpec { weights: &w, scale: 2.0, surrogate: Surrogate::LogProb, kl: None, entropy_coef: 0.0 };
        let clipped = ObjectiveSpec { surrogate: Surrogate::Clipped { eps: 0.2, old: &old }, ..base };
        let a = objective(&actor, &params, &trajs, &base).unwrap();
        let b = objective(&actor, &params, &trajs, &clipped).unwrap();
        for (x, y) in a.grad.iter().zip(&b.grad) {
            assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
        assert_eq!(b.clip_fraction, 0.0);
    }

    #[test]
    fn kl_to_self_is_zero() {
        let (actor, params, trajs) = setup();
        let reference: Vec<_> = trajs.iter().map(|t| step_distributions(&actor, &params, t).unwrap()).collect();
        let w = vec![0.0; trajs.len()];
        let spec = ObjectiveSpec {
            weights: &w,
            scale: 1.0,
            surrogate: Surrogate::LogProb,
            kl: Some(KlPenalty { beta: 0.5, reference: &reference }),
            entropy_coef: 0.0,
        };
        let v = objective(&actor, &params, &trajs, &spec).unwrap();
        assert_eq!(v.kl_mean, 0.0);
        assert!(v.grad.iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn equal_rewards_give_zero_baseline_gradient() {
        let (actor, params, trajs) = setup();
        let rewards = vec![3.0; trajs.len()];
        let v = baseline_risk_grad(&actor, &params, &trajs, &rewards, 20.0).unwrap();
        assert!(v.grad.iter().all(|&g| g == 0.0));
        let v = rank_mapped_grad(&actor, &params, &trajs, &rewards, 20.0, 1.0).unwrap();
        assert!(v.grad.iter().any(|&g| g != 0.0));
    }

    #[test]
    fn mismatched_inputs_rejected() {
        let (actor, params, trajs) = setup();
        let w = vec![1.0; trajs.len() - 1];
        let spec = ObjectiveSpec { weights: &w, scale: 1.0, surrogate: Surrogate::LogProb, kl: None, entropy_coef: 0.0 };
        assert!(matches!(objective(&actor, &params, &trajs, &spec), Err(Error::Contract(_))));
    }
}
