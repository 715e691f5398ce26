use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::PpoError;
use crate::delay::Observation;
use crate::env::{stream_rng, EnvConfig, EpisodeMetrics, SimEnv};
use crate::nn::{log_prob, ActorCritic};

/// RNG stream of the action noise; environment `i` uses `ENV_STREAM_BASE + i`.
const ACTION_STREAM: u64 = 1;
const ENV_STREAM_BASE: u64 = 1000;

/// Transitions stored column-wise, each environment's steps contiguous.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub proprio_dim: usize,
    pub depth_dim: usize,
    pub action_dim: usize,
    pub proprio: Vec<f64>,
    pub depth: Vec<f32>,
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub terminated: Vec<bool>,
    pub truncated: Vec<bool>,
    /// Last transition of an environment's segment in this batch.
    pub segment_end: Vec<bool>,
    /// Value of the successor state where it is not the next row: after a
    /// truncation or at a segment end. Zero elsewhere.
    pub bootstrap: Vec<f64>,
    pub episode_ids: Vec<u64>,
}

impl Trajectory {
    pub fn new(proprio_dim: usize, depth_dim: usize, action_dim: usize) -> Self {
        Self {
            proprio_dim,
            depth_dim,
            action_dim,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn done(&self, i: usize) -> bool {
        self.terminated[i] || self.truncated[i]
    }

    pub fn proprio_row(&self, i: usize) -> &[f64] {
        &self.proprio[i * self.proprio_dim..(i + 1) * self.proprio_dim]
    }

    pub fn depth_row(&self, i: usize) -> &[f32] {
        &self.depth[i * self.depth_dim..(i + 1) * self.depth_dim]
    }

    pub fn action_row(&self, i: usize) -> &[f64] {
        &self.actions[i * self.action_dim..(i + 1) * self.action_dim]
    }

    pub fn append(&mut self, other: Trajectory) {
        self.proprio.extend(other.proprio);
        self.depth.extend(other.depth);
        self.actions.extend(other.actions);
        self.log_probs.extend(other.log_probs);
        self.rewards.extend(other.rewards);
        self.values.extend(other.values);
        self.terminated.extend(other.terminated);
        self.truncated.extend(other.truncated);
        self.segment_end.extend(other.segment_end);
        self.bootstrap.extend(other.bootstrap);
        self.episode_ids.extend(other.episode_ids);
    }

    /// Gathers rows into network input arrays.
    pub fn gather(&self, rows: &[usize]) -> (Array2<f64>, Array2<f32>) {
        let mut p = Vec::with_capacity(rows.len() * self.proprio_dim);
        let mut d = Vec::with_capacity(rows.len() * self.depth_dim);
        for &i in rows {
            p.extend_from_slice(self.proprio_row(i));
            d.extend_from_slice(self.depth_row(i));
        }
        (
            Array2::from_shape_vec((rows.len(), self.proprio_dim), p).expect("row-major gather"),
            Array2::from_shape_vec((rows.len(), self.depth_dim), d).expect("row-major gather"),
        )
    }
}

/// Summary of an episode that finished during collection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompletedEpisode {
    pub env: usize,
    pub episode_id: u64,
    pub episode_return: f64,
    pub length: usize,
    pub metrics: EpisodeMetrics,
}

/// Stacks observations into network input arrays. Depth rows are empty when
/// the observations carry no frames.
pub fn observation_arrays(obs: &[&Observation]) -> (Array2<f64>, Array2<f32>) {
    let pd = obs.first().map_or(0, |o| o.proprio.len());
    let dd = obs.first().map_or(0, |o| o.depth.len());
    let mut p = Vec::with_capacity(obs.len() * pd);
    let mut d = Vec::with_capacity(obs.len() * dd);
    for o in obs {
        p.extend_from_slice(&o.proprio);
        d.extend_from_slice(&o.depth);
    }
    (
        Array2::from_shape_vec((obs.len(), pd), p).expect("uniform proprio width"),
        Array2::from_shape_vec((obs.len(), dd), d).expect("uniform depth width"),
    )
}

/// A set of environments advanced in lockstep, each with its own RNG stream.
pub struct RolloutWorkers {
    envs: Vec<SimEnv>,
    obs: Vec<Observation>,
    episode_ids: Vec<u64>,
    next_episode: u64,
    action_rng: ChaCha8Rng,
}

impl RolloutWorkers {
    pub fn new(config: &EnvConfig, num_envs: usize, seed: u64) -> Result<Self, PpoError> {
        let mut envs = Vec::with_capacity(num_envs);
        let mut obs = Vec::with_capacity(num_envs);
        for i in 0..num_envs {
            let wrap = |source| PpoError::Env { env: i, source };
            let mut env = SimEnv::new(config.clone(), stream_rng(seed, ENV_STREAM_BASE + i as u64)).map_err(wrap)?;
            obs.push(env.reset().map_err(wrap)?);
            envs.push(env);
        }
        Ok(Self {
            envs,
            obs,
            episode_ids: (0..num_envs as u64).collect(),
            next_episode: num_envs as u64,
            action_rng: stream_rng(seed, ACTION_STREAM),
        })
    }

    pub fn num_envs(&self) -> usize {
        self.envs.len()
    }

    pub fn observations(&self) -> &[Observation] {
        &self.obs
    }
}

/// Steps every environment `batch_size / num_envs` times with actions drawn
/// from the Gaussian policy. Environments reset themselves when an episode
/// ends; the returned list holds the episodes that finished.
pub fn collect_rollout(
    net: &ActorCritic,
    workers: &mut RolloutWorkers,
    batch_size: usize,
) -> Result<(Trajectory, Vec<CompletedEpisode>), PpoError> {
    let n = workers.num_envs();
    if n == 0 || !batch_size.is_multiple_of(n) {
        return Err(PpoError::InvalidConfig(format!(
            "batch_size {batch_size} is not a multiple of {n} environments"
        )));
    }
    let arch = net.arch();
    let a_dim = arch.action_dim;
    let depth_dim = workers.obs[0].depth.len();
    let mut segments: Vec<Trajectory> = (0..n)
        .map(|_| Trajectory::new(arch.proprio_dim, depth_dim, a_dim))
        .collect();
    let mut completed = Vec::new();

    for _ in 0..batch_size / n {
        let refs: Vec<&Observation> = workers.obs.iter().collect();
        let (p, d) = observation_arrays(&refs);
        let out = net.forward(p.view(), d.view())?;
        for i in 0..n {
            let mean = out.mean.row(i);
            let action: Vec<f64> = mean
                .iter()
                .zip(&out.log_std)
                .map(|(m, ls)| {
                    let eps: f64 = workers.action_rng.sample(StandardNormal);
                    m + ls.exp() * eps
                })
                .collect();
            let lp = log_prob(mean.as_slice().expect("contiguous row"), &out.log_std, &action);
            let env = &mut workers.envs[i];
            let step = env
                .control_step([action[0], action[1]])
                .map_err(|source| PpoError::Env { env: i, source })?;

            let seg = &mut segments[i];
            let obs = std::mem::replace(&mut workers.obs[i], step.observation.clone());
            seg.proprio.extend_from_slice(&obs.proprio);
            seg.depth.extend_from_slice(&obs.depth);
            seg.actions.extend_from_slice(&action);
            seg.log_probs.push(lp);
            seg.rewards.push(step.reward);
            seg.values.push(out.value[i]);
            seg.terminated.push(step.terminated);
            seg.truncated.push(step.truncated && !step.terminated);
            seg.segment_end.push(false);
            seg.bootstrap.push(0.0);
            seg.episode_ids.push(workers.episode_ids[i]);

            if step.done() {
                if !step.terminated {
                    let v = net.forward_one(&step.observation.proprio, &step.observation.depth)?.value;
                    *seg.bootstrap.last_mut().expect("just pushed") = v;
                }
                completed.push(CompletedEpisode {
                    env: i,
                    episode_id: workers.episode_ids[i],
                    episode_return: env.episode_return(),
                    length: env.steps(),
                    metrics: step.metrics,
                });
                workers.obs[i] = env.reset().map_err(|source| PpoError::Env { env: i, source })?;
                workers.episode_ids[i] = workers.next_episode;
                workers.next_episode += 1;
            }
        }
    }

    // Bootstrap values for segments cut mid-episode.
    let refs: Vec<&Observation> = workers.obs.iter().collect();
    let (p, d) = observation_arrays(&refs);
    let tail = net.forward(p.view(), d.view())?;
    let mut traj = Trajectory::new(arch.proprio_dim, depth_dim, a_dim);
    for (i, mut seg) in segments.into_iter().enumerate() {
        if let Some(last) = seg.len().checked_sub(1) {
            seg.segment_end[last] = true;
            if !seg.done(last) {
                seg.bootstrap[last] = tail.value[i];
            }
        }
        traj.append(seg);
    }
    Ok((traj, completed))
}
