use super::Trajectory;

/// Generalized advantage estimates and value targets
/// (`returns = advantages + values`), unnormalized.
///
/// A terminated step bootstraps from zero. A truncated step, or the last
/// step of an environment's segment, bootstraps from its stored successor
/// value. The recursion never crosses an episode or segment boundary.
pub fn compute_gae(traj: &Trajectory, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = traj.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let cut = traj.done(t) || traj.segment_end[t];
        let next_value = if traj.terminated[t] {
            0.0
        } else if cut {
            traj.bootstrap[t]
        } else {
            traj.values[t + 1]
        };
        let delta = traj.rewards[t] + gamma * next_value - traj.values[t];
        running = if cut { delta } else { delta + gamma * lambda * running };
        adv[t] = running;
    }
    let returns = adv.iter().zip(&traj.values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Shifts and scales to zero mean and unit (population) standard deviation.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in adv.iter_mut() {
        *a = if std > 0.0 { (*a - mean) / std } else { 0.0 };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn traj_from(rewards: Vec<f64>, values: Vec<f64>, terminated: Vec<bool>, truncated: Vec<bool>, bootstrap: Vec<f64>) -> Trajectory {
        let n = rewards.len();
        let mut segment_end = vec![false; n];
        if n > 0 {
            segment_end[n - 1] = true;
        }
        Trajectory {
            rewards,
            values,
            terminated,
            truncated,
            segment_end,
            bootstrap,
            episode_ids: vec![0; n],
            ..Trajectory::default()
        }
    }

    #[test]
    fn single_terminal_step() {
        let t = traj_from(vec![1.0], vec![0.0], vec![true], vec![false], vec![0.0]);
        let (adv, ret) = compute_gae(&t, 1.0, 1.0);
        assert_eq!(adv, vec![1.0]);
        assert_eq!(ret, vec![1.0]);
    }

    #[test]
    fn zero_rewards_and_values() {
        let t = traj_from(vec![0.0; 5], vec![0.0; 5], vec![false; 5], vec![false; 5], vec![0.0; 5]);
        let (adv, _) = compute_gae(&t, 0.99, 0.95);
        assert!(adv.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn truncation_bootstraps_but_termination_does_not() {
        let trunc = traj_from(vec![1.0], vec![0.5], vec![false], vec![true], vec![2.0]);
        let term = traj_from(vec![1.0], vec![0.5], vec![true], vec![false], vec![0.0]);
        assert!((compute_gae(&trunc, 0.9, 0.95).0[0] - (1.0 + 0.9 * 2.0 - 0.5)).abs() < 1e-15);
        assert!((compute_gae(&term, 0.9, 0.95).0[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn normalization_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut a: Vec<f64> = (0..1000).map(|_| rng.random_range(-3.0..10.0)).collect();
        normalize_advantages(&mut a);
        let n = a.len() as f64;
        let mean = a.iter().sum::<f64>() / n;
        let std = (a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() <= 1e-6);
        assert!((std - 1.0).abs() <= 1e-6);
    }

    proptest! {
        #[test]
        fn normalized_advantages_have_unit_moments(v in prop::collection::vec(-100.0f64..100.0, 2..200)) {
            let mut a = v.clone();
            normalize_advantages(&mut a);
            let n = a.len() as f64;
            let mean = a.iter().sum::<f64>() / n;
            prop_assert!(mean.abs() <= 1e-6);
            let spread = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min);
            if spread > 1e-6 {
                let std = (a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
                prop_assert!((std - 1.0).abs() <= 1e-6);
            }
        }
    }
}
