use rand::seq::SliceRandom;
use rand::Rng;

use super::{PpoConfig, PpoError, Trajectory};
use crate::nn::{entropy, log_prob, log_prob_grads, ActorCritic, Adam, OutputGrads};

/// Averages over every minibatch step of one update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Mean of the `(r - 1) - ln r` estimator of KL(old || new).
    pub kl: f64,
    /// Fraction of samples whose ratio left `[1 - clip, 1 + clip]`.
    pub clip_fraction: f64,
    /// Largest `|r - 1|` on the first minibatch, before any step was taken.
    pub initial_ratio_deviation: f64,
    pub steps: usize,
}

pub(crate) struct MinibatchLoss {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub kl: f64,
    pub clip_fraction: f64,
    pub max_ratio_deviation: f64,
    pub grads: OutputGrads,
}

/// Rows per forward/backward pass inside a minibatch. Keeps the conv
/// scratch buffers small enough for the allocator to recycle them.
const GRAD_CHUNK: usize = 128;

/// Clipped-surrogate and value terms on `rows`, averaged over a minibatch
/// of `norm` rows, plus their gradient with respect to the network outputs.
/// The entropy bonus is left to the caller. Leaves a recorded forward pass
/// on `net`.
pub(crate) fn minibatch_loss(
    net: &mut ActorCritic,
    traj: &Trajectory,
    advantages: &[f64],
    returns: &[f64],
    rows: &[usize],
    norm: usize,
    cfg: &PpoConfig,
) -> Result<MinibatchLoss, PpoError> {
    let (p, d) = traj.gather(rows);
    let out = net.forward_recorded(p.view(), d.view())?;
    let m = norm as f64;
    let a_dim = traj.action_dim;
    let mut grads = OutputGrads::zeros(rows.len(), a_dim);
    let (mut policy_loss, mut value_loss, mut kl, mut clipped, mut max_dev) = (0.0, 0.0, 0.0, 0usize, 0.0f64);
    let mut dm = vec![0.0; a_dim];
    let mut ds = vec![0.0; a_dim];
    for (j, &i) in rows.iter().enumerate() {
        let mean = out.mean.row(j);
        let mean = mean.as_slice().expect("contiguous row");
        let action = traj.action_row(i);
        let lp = log_prob(mean, &out.log_std, action);
        let log_ratio = lp - traj.log_probs[i];
        let ratio = log_ratio.exp();
        let adv = advantages[i];
        let clipped_ratio = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip);
        let unclipped = ratio * adv;
        let bounded = clipped_ratio * adv;
        policy_loss -= unclipped.min(bounded) / m;
        // d(-min)/d(log-prob): only the unclipped branch depends on the
        // parameters once the bound is active.
        let d_lp = if unclipped <= bounded { -adv * ratio / m } else { 0.0 };
        log_prob_grads(mean, &out.log_std, action, &mut dm, &mut ds);
        for k in 0..a_dim {
            grads.d_mean[[j, k]] = d_lp * dm[k];
            grads.d_log_std[k] += d_lp * ds[k];
        }

        let err = out.value[j] - returns[i];
        value_loss += err * err / m;
        grads.d_value[j] = cfg.value_coef * 2.0 * err / m;

        kl += ((ratio - 1.0) - log_ratio) / m;
        if (ratio - 1.0).abs() > cfg.clip {
            clipped += 1;
        }
        max_dev = max_dev.max((ratio - 1.0).abs());
    }
    Ok(MinibatchLoss {
        policy_loss,
        value_loss,
        entropy: entropy(&out.log_std),
        kl,
        clip_fraction: clipped as f64 / m,
        max_ratio_deviation: max_dev,
        grads,
    })
}

/// Zeroes the gradients and accumulates the full minibatch gradient in
/// chunks of [`GRAD_CHUNK`] rows. The returned `grads` field is empty.
fn accumulate_minibatch(
    net: &mut ActorCritic,
    traj: &Trajectory,
    advantages: &[f64],
    returns: &[f64],
    rows: &[usize],
    cfg: &PpoConfig,
) -> Result<MinibatchLoss, PpoError> {
    net.params_mut().zero_grads();
    let mut acc = MinibatchLoss {
        policy_loss: 0.0,
        value_loss: 0.0,
        entropy: 0.0,
        kl: 0.0,
        clip_fraction: 0.0,
        max_ratio_deviation: 0.0,
        grads: OutputGrads::zeros(0, traj.action_dim),
    };
    for (c, part) in rows.chunks(GRAD_CHUNK).enumerate() {
        let mut loss = minibatch_loss(net, traj, advantages, returns, part, rows.len(), cfg)?;
        if c == 0 {
            for g in &mut loss.grads.d_log_std {
                *g -= cfg.entropy_coef;
            }
            acc.entropy = loss.entropy;
        }
        net.backward(&loss.grads)?;
        acc.policy_loss += loss.policy_loss;
        acc.value_loss += loss.value_loss;
        acc.kl += loss.kl;
        acc.clip_fraction += loss.clip_fraction;
        acc.max_ratio_deviation = acc.max_ratio_deviation.max(loss.max_ratio_deviation);
    }
    Ok(acc)
}

/// Runs `cfg.epochs` passes over the batch, each shuffled into
/// `cfg.minibatches` minibatches, with one Adam step per minibatch.
/// `advantages` should already be normalized.
pub fn ppo_update<R: Rng + ?Sized>(
    net: &mut ActorCritic,
    opt: &mut Adam,
    traj: &Trajectory,
    advantages: &[f64],
    returns: &[f64],
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateStats, PpoError> {
    let n = traj.len();
    if advantages.len() != n || returns.len() != n {
        return Err(PpoError::InvalidConfig("advantages and returns must match the batch".into()));
    }
    let chunk = n.div_ceil(cfg.minibatches).max(1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut stats = UpdateStats::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        for (mb, rows) in order.chunks(chunk).enumerate() {
            let loss = accumulate_minibatch(net, traj, advantages, returns, rows, cfg)?;
            let total = loss.policy_loss + cfg.value_coef * loss.value_loss - cfg.entropy_coef * loss.entropy;
            if !total.is_finite() {
                return Err(PpoError::NonFiniteLoss { epoch, minibatch: mb });
            }
            if stats.steps == 0 {
                stats.initial_ratio_deviation = loss.max_ratio_deviation;
            }
            opt.step(net.params_mut());
            stats.policy_loss += loss.policy_loss;
            stats.value_loss += loss.value_loss;
            stats.entropy += loss.entropy;
            stats.kl += loss.kl;
            stats.clip_fraction += loss.clip_fraction;
            stats.steps += 1;
        }
    }
    if stats.steps > 0 {
        let s = stats.steps as f64;
        stats.policy_loss /= s;
        stats.value_loss /= s;
        stats.entropy /= s;
        stats.kl /= s;
        stats.clip_fraction /= s;
    }
    if !net.params().all_finite() {
        return Err(PpoError::Neural(crate::nn::NeuralError::NonFinite("parameters after update")));
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay::{PipelineConfig, PipelineMode};
    use crate::env::{EnvConfig, WorldConfig};
    use crate::nn::AdamConfig;
    use crate::ppo::{arch_for, collect_rollout, compute_gae, normalize_advantages, RolloutWorkers};
    use crate::randomization::RandomizationRanges;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn batch(mode: PipelineMode, n: usize) -> (ActorCritic, Trajectory, Vec<f64>, Vec<f64>, PpoConfig) {
        let env = EnvConfig::new(WorldConfig::default(), PipelineConfig::for_mode(mode), RandomizationRanges::default());
        let net = ActorCritic::new(arch_for(&env, -0.5), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut w = RolloutWorkers::new(&env, 2, 2).unwrap();
        let (t, _) = collect_rollout(&net, &mut w, n).unwrap();
        let cfg = PpoConfig {
            batch_size: n,
            minibatches: 4,
            num_envs: 2,
            learning_rate: 1e-3,
            ..PpoConfig::default()
        };
        let (mut adv, ret) = compute_gae(&t, cfg.gamma, cfg.gae_lambda);
        normalize_advantages(&mut adv);
        (net, t, adv, ret, cfg)
    }

    #[test]
    fn first_minibatch_ratios_are_one() {
        let (mut net, t, adv, ret, cfg) = batch(PipelineMode::Mmdr, 32);
        let mut opt = Adam::new(AdamConfig::default(), net.params().len());
        let stats = ppo_update(&mut net, &mut opt, &t, &adv, &ret, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(stats.initial_ratio_deviation <= 1e-6, "{}", stats.initial_ratio_deviation);
        assert_eq!(stats.steps, cfg.epochs * cfg.minibatches);
    }

    #[test]
    fn update_is_reproducible() {
        let (net, t, adv, ret, cfg) = batch(PipelineMode::StateOnly, 64);
        let run = || {
            let mut net = net.clone();
            let mut opt = Adam::new(AdamConfig::default(), net.params().len());
            ppo_update(&mut net, &mut opt, &t, &adv, &ret, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
            net.params().values.clone()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn single_step_lowers_surrogate() {
        let (mut net, t, adv, ret, cfg) = batch(PipelineMode::StateOnly, 64);
        let cfg = PpoConfig {
            value_coef: 0.0,
            learning_rate: 1e-4,
            ..cfg
        };
        let rows: Vec<usize> = (0..t.len()).collect();
        let before = minibatch_loss(&mut net, &t, &adv, &ret, &rows, rows.len(), &cfg).unwrap();
        net.params_mut().zero_grads();
        net.backward(&before.grads).unwrap();
        let mut opt = Adam::new(AdamConfig { lr: cfg.learning_rate, ..AdamConfig::default() }, net.params().len());
        opt.step(net.params_mut());
        let after = minibatch_loss(&mut net, &t, &adv, &ret, &rows, rows.len(), &cfg).unwrap();
        assert!(after.policy_loss < before.policy_loss, "{} -> {}", before.policy_loss, after.policy_loss);
    }

    #[test]
    fn zero_clip_kills_gradient_off_ratio_one() {
        let (mut net, t, adv, ret, cfg) = batch(PipelineMode::StateOnly, 32);
        let cfg = PpoConfig { clip: 0.0, value_coef: 0.0, ..cfg };
        // Move the policy so that ratios differ from one.
        let id = net.layout().find("log_std").unwrap();
        net.params_mut().slice_mut(id).iter_mut().for_each(|v| *v += 0.3);
        let rows: Vec<usize> = (0..t.len()).collect();
        let loss = minibatch_loss(&mut net, &t, &adv, &ret, &rows, rows.len(), &cfg).unwrap();
        // With clip 0, min(r A, A) takes the unclipped branch only when
        // r A <= A; the rest contributes nothing.
        for (j, &i) in rows.iter().enumerate() {
            let mean = loss.grads.d_mean.row(j);
            let out = net.forward_one(t.proprio_row(i), t.depth_row(i)).unwrap();
            let ratio = (log_prob(&out.mean, &out.log_std, t.action_row(i)) - t.log_probs[i]).exp();
            if ratio * adv[i] > adv[i] {
                assert!(mean.iter().all(|&g| g == 0.0));
            }
        }
    }

    #[test]
    fn chunked_gradient_matches_single_pass() {
        let (net, t, adv, ret, cfg) = batch(PipelineMode::Mmdr, 320);
        let cfg = PpoConfig { entropy_coef: 0.01, ..cfg };
        let rows: Vec<usize> = (0..t.len()).rev().collect();
        let mut whole = net.clone();
        let mut loss = minibatch_loss(&mut whole, &t, &adv, &ret, &rows, rows.len(), &cfg).unwrap();
        loss.grads.d_log_std.iter_mut().for_each(|g| *g -= cfg.entropy_coef);
        whole.params_mut().zero_grads();
        whole.backward(&loss.grads).unwrap();
        let mut chunked = net.clone();
        let acc = accumulate_minibatch(&mut chunked, &t, &adv, &ret, &rows, &cfg).unwrap();
        assert!((acc.policy_loss - loss.policy_loss).abs() < 1e-12);
        assert!((acc.value_loss - loss.value_loss).abs() < 1e-9 * loss.value_loss.abs().max(1.0));
        for (a, b) in chunked.params().grads.iter().zip(&whole.params().grads) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1e-3), "{a} vs {b}");
        }
    }
}
