//! Breadth-first autoregressive sampling of expression batches.

pub mod masks;

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::actor::{Actor, Context};
use crate::error::{Error, Result};
use crate::expr::token::TokenLibrary;
use crate::expr::tree::{ExprTree, Position, TreeBuilder};
pub use masks::{apply_masks, legal_mask, MaskRules, NodeContext, TokenMask};

#[derive(Debug, Clone, PartialEq)]
pub struct SampleConfig {
    pub batch: usize,
    /// Trees grown per returned tree (`ceil(oversampling * batch)` in total).
    pub oversampling: f64,
    /// Maximum number of nodes per tree.
    pub max_nodes: usize,
    pub rules: MaskRules,
}

impl SampleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.oversampling >= 1.0) {
            return Err(Error::Config(format!("oversampling must be >= 1, got {}", self.oversampling)));
        }
        if self.max_nodes == 0 {
            return Err(Error::Config("node budget must be positive".into()));
        }
        Ok(())
    }

    pub fn grown(&self) -> usize {
        (self.oversampling * self.batch as f64).ceil() as usize
    }
}

/// One sampled tree with the masks and log-probabilities seen while growing it.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub tree: ExprTree,
    pub masks: Vec<TokenMask>,
    pub log_probs: Vec<f64>,
}

impl Trajectory {
    pub fn tokens(&self) -> Vec<usize> {
        self.tree.tokens()
    }

    pub fn len(&self) -> usize {
        self.tree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.is_empty()
    }

    pub fn total_log_prob(&self) -> f64 {
        self.log_probs.iter().sum()
    }

    pub fn positions(&self) -> Vec<Position> {
        self.tree.nodes().iter().map(|n| n.position).collect()
    }
}

/// Model input for predicting node `step` of a finished sequence.
pub fn step_context<'a>(step: usize, tokens: &'a [usize], positions: &'a [Position]) -> Context<'a> {
    Context {
        tokens: &tokens[..step],
        positions: &positions[..step],
        query: positions[step],
    }
}

/// Masked log-softmax; masked entries come back as `-inf`.
pub fn masked_log_softmax(logits: &[f64], mask: TokenMask) -> Vec<f64> {
    let mut out = logits.to_vec();
    apply_masks(&mut out, mask);
    let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = out
        .iter()
        .map(|&l| if l == f64::NEG_INFINITY { 0.0 } else { (l - max).exp() })
        .sum();
    let lse = max + sum.ln();
    for l in &mut out {
        if *l != f64::NEG_INFINITY {
            *l -= lse;
        }
    }
    out
}

/// Inverse-CDF draw from `log_probs` given a uniform `u` in `[0, 1)`.
pub fn sample_index(log_probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &lp) in log_probs.iter().enumerate() {
        if lp == f64::NEG_INFINITY {
            continue;
        }
        acc += lp.exp();
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

fn grow_tree(
    actor: &Actor,
    params: &[f64],
    library: &TokenLibrary,
    config: &SampleConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory> {
    let mut builder = TreeBuilder::new();
    let mut tokens = Vec::new();
    let mut positions = Vec::new();
    let mut masks = Vec::new();
    let mut log_probs = Vec::new();
    while !builder.is_complete() {
        let ctx = NodeContext::from_builder(&builder, library, config.max_nodes);
        let mask = legal_mask(library, &ctx, &config.rules)?;
        let query = builder.next_position();
        let fwd = actor.forward(
            params,
            &Context {
                tokens: &tokens,
                positions: &positions,
                query,
            },
        )?;
        let lp = masked_log_softmax(&fwd.logits, mask);
        let choice = sample_index(&lp, rng.gen::<f64>());
        builder.push(choice, library.op(choice));
        tokens.push(choice);
        positions.push(query);
        masks.push(mask);
        log_probs.push(lp[choice]);
        if builder.len() > config.max_nodes && !builder.is_complete() {
            return Err(Error::Usage(format!(
                "tree exceeded the node budget {} (enable the budget rule)",
                config.max_nodes
            )));
        }
    }
    Ok(Trajectory {
        tree: builder.finish(),
        masks,
        log_probs,
    })
}

/// Grows `ceil(oversampling * batch)` trees and returns the first `batch`
/// structurally unique ones, topping up with duplicates in sampling order if
/// there are too few uniques. Tree `i` draws from stream `i` of a ChaCha
/// generator seeded with `seed`, so results do not depend on thread count.
pub fn sample_batch(
    actor: &Actor,
    params: &[f64],
    library: &TokenLibrary,
    config: &SampleConfig,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    config.validate()?;
    if library.len() != actor.config().vocab {
        return Err(Error::Config(format!(
            "library has {} tokens, model expects {}",
            library.len(),
            actor.config().vocab
        )));
    }
    if actor.config().max_len < config.max_nodes {
        return Err(Error::Config("model max length is below the node budget".into()));
    }
    let grown: Vec<Trajectory> = (0..config.grown())
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            grow_tree(actor, params, library, config, &mut rng)
        })
        .collect::<Result<_>>()?;
    Ok(take_unique(grown, config.batch))
}

/// First `batch` unique trees by token sequence; duplicates fill any shortfall.
pub fn take_unique(grown: Vec<Trajectory>, batch: usize) -> Vec<Trajectory> {
    let mut seen = HashSet::new();
    let mut unique = Vec::with_capacity(batch);
    let mut dups = Vec::new();
    for t in grown {
        if unique.len() < batch && seen.insert(t.tokens()) {
            unique.push(t);
        } else if unique.len() + dups.len() < batch {
            dups.push(t);
        }
    }
    let short = batch.saturating_sub(unique.len());
    unique.extend(dups.into_iter().take(short));
    unique
}

/// Per-step log-probabilities of a stored trajectory under `params`, replaying
/// its recorded masks.
pub fn log_prob(actor: &Actor, params: &[f64], trajectory: &Trajectory) -> Result<(f64, Vec<f64>)> {
    let tokens = trajectory.tokens();
    let positions = trajectory.positions();
    let mut per_token = Vec::with_capacity(tokens.len());
    for step in 0..tokens.len() {
        let fwd = actor.forward(params, &step_context(step, &tokens, &positions))?;
        let lp = masked_log_softmax(&fwd.logits, trajectory.masks[step]);
        let chosen = lp[tokens[step]];
        if chosen == f64::NEG_INFINITY {
            return Err(Error::Contract(format!(
                "token {} at step {step} is masked out on replay",
                tokens[step]
            )));
        }
        per_token.push(chosen);
    }
    Ok((per_token.iter().sum(), per_token))
}

/// Debug dump: one `infix<TAB>log-prob` line per trajectory.
pub fn dump_trajectories(trajectories: &[Trajectory]) -> String {
    let mut out = String::new();
    for t in trajectories {
        writeln!(out, "{}\t{:.6}", t.tree.to_infix(), t.total_log_prob()).unwrap();
    }
    out
}
