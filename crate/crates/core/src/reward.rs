//! Violation costs, the geometric reward and group-relative advantages.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{signed_rect_distance, transform_vertices, workspace_deficit, Pose};
use crate::scene::Scene;
use crate::verifier::VerifyConfig;

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("empty group")]
    EmptyGroup,
    #[error("length mismatch: {0} advantages vs {1} log-likelihoods")]
    LengthMismatch(usize, usize),
    #[error("{0} must be finite and positive")]
    NonPositive(&'static str),
    #[error("{0} must be finite and non-negative")]
    Negative(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub w_b: f64,
    pub w_o: f64,
    pub w_s: f64,
    pub alpha: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self { w_b: 1.0, w_o: 1.0, w_s: 0.5, alpha: 1.0 }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<(), RewardError> {
        for (name, v) in [("w_b", self.w_b), ("w_o", self.w_o), ("w_s", self.w_s), ("alpha", self.alpha)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(RewardError::NonPositive(name));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub boundary_sum: f64,
    pub obstacle_sum: f64,
    pub step_sum: f64,
    pub total: f64,
}

/// Cost breakdown plus the reward derived from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardReport {
    pub boundary_sum: f64,
    pub obstacle_sum: f64,
    pub step_sum: f64,
    pub total: f64,
    pub reward: f64,
}

pub fn boundary_cost(scene: &Scene, q: &Pose) -> f64 {
    transform_vertices(&scene.object, q)
        .into_iter()
        .map(|p| workspace_deficit(p, &scene.workspace).powi(2))
        .sum()
}

pub fn obstacle_cost(scene: &Scene, q: &Pose) -> f64 {
    let verts = transform_vertices(&scene.object, q);
    scene
        .obstacles
        .iter()
        .flat_map(|o| verts.iter().map(move |p| (-signed_rect_distance(*p, o)).max(0.0).powi(2)))
        .sum()
}

pub fn step_cost(qa: &Pose, qb: &Pose, cfg: &VerifyConfig) -> f64 {
    let lin = (qa.translation_to(qb) - cfg.lin_limit).max(0.0);
    let ang = (qa.rotation_to(qb) - cfg.ang_limit).max(0.0);
    lin * lin + ang * ang
}

pub fn trajectory_cost(scene: &Scene, traj: &[Pose], weights: &CostWeights, cfg: &VerifyConfig) -> CostBreakdown {
    let boundary_sum: f64 = traj.iter().map(|q| boundary_cost(scene, q)).sum();
    let obstacle_sum: f64 = traj.iter().map(|q| obstacle_cost(scene, q)).sum();
    let step_sum: f64 = traj.windows(2).map(|w| step_cost(&w[0], &w[1], cfg)).sum();
    CostBreakdown {
        boundary_sum,
        obstacle_sum,
        step_sum,
        total: weights.w_b * boundary_sum + weights.w_o * obstacle_sum + weights.w_s * step_sum,
    }
}

pub fn geometric_reward(total_cost: f64, alpha: f64) -> f64 {
    1.0 / (1.0 + alpha * total_cost)
}

pub fn score_trajectory(scene: &Scene, traj: &[Pose], weights: &CostWeights, cfg: &VerifyConfig) -> RewardReport {
    let c = trajectory_cost(scene, traj, weights, cfg);
    RewardReport {
        boundary_sum: c.boundary_sum,
        obstacle_sum: c.obstacle_sum,
        step_sum: c.step_sum,
        total: c.total,
        reward: geometric_reward(c.total, weights.alpha),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupScores {
    pub rewards: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub advantages: Vec<f64>,
    pub epsilon: f64,
}

/// Population statistics and normalized advantages of one group.
pub fn group_advantages(rewards: &[f64], epsilon: f64) -> Result<GroupScores, RewardError> {
    if rewards.is_empty() {
        return Err(RewardError::EmptyGroup);
    }
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(RewardError::NonPositive("epsilon"));
    }
    let g = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / g;
    let mut dev: Vec<f64> = rewards.iter().map(|r| r - mean).collect();
    // Second centering pass removes the rounding residue of the first.
    let resid = dev.iter().sum::<f64>() / g;
    dev.iter_mut().for_each(|d| *d -= resid);
    let std = (dev.iter().map(|d| d * d).sum::<f64>() / g).sqrt();
    let advantages = dev.iter().map(|d| d / (std + epsilon)).collect();
    Ok(GroupScores { rewards: rewards.to_vec(), mean, std, advantages, epsilon })
}

pub fn grpo_objective(advantages: &[f64], log_likelihoods: &[f64], kl: f64, beta_kl: f64) -> Result<f64, RewardError> {
    if advantages.len() != log_likelihoods.len() {
        return Err(RewardError::LengthMismatch(advantages.len(), log_likelihoods.len()));
    }
    if advantages.is_empty() {
        return Err(RewardError::EmptyGroup);
    }
    if !(kl.is_finite() && kl >= 0.0) {
        return Err(RewardError::Negative("kl"));
    }
    if !(beta_kl.is_finite() && beta_kl >= 0.0) {
        return Err(RewardError::Negative("beta_kl"));
    }
    let g = advantages.len() as f64;
    let s: f64 = advantages.iter().zip(log_likelihoods).map(|(a, l)| a * l).sum();
    Ok(s / g - beta_kl * kl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Polygon, Rect};
    use crate::scene::DistributionTag;
    use proptest::prelude::*;

    fn scene(obstacles: Vec<Rect>) -> Scene {
        Scene {
            workspace: Rect::new(0.0, 10.0, 0.0, 10.0),
            obstacles,
            openings: vec![],
            object: Polygon::from_xy(&[(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)]).unwrap(),
            start: Pose::new(1.0, 5.0, 0.0),
            goal: Pose::new(9.0, 5.0, 0.0),
            id: "fixture".into(),
            distribution_tag: DistributionTag::Id,
            gen: None,
        }
    }

    #[test]
    fn boundary_examples() {
        let s = scene(vec![]);
        assert_eq!(boundary_cost(&s, &Pose::new(5.0, 5.0, 0.0)), 0.0);
        // Vertices at x = 10.3 (two of them).
        assert!((boundary_cost(&s, &Pose::new(9.8, 5.0, 0.0)) - 2.0 * 0.09).abs() < 1e-12);
        // Corner (10.3, 10.4) is 0.7 out; its neighbours 0.3 and 0.4.
        let c = boundary_cost(&s, &Pose::new(9.8, 9.9, 0.0));
        assert!((c - (0.49 + 0.09 + 0.16)).abs() < 1e-12);
    }

    #[test]
    fn obstacle_examples() {
        let s = scene(vec![Rect::new(6.0, 8.0, 0.0, 10.0)]);
        assert_eq!(obstacle_cost(&s, &Pose::new(3.0, 5.0, 0.0)), 0.0);
        // Two vertices at x = 6.2, 0.2 inside.
        assert!((obstacle_cost(&s, &Pose::new(5.7, 5.0, 0.0)) - 2.0 * 0.04).abs() < 1e-12);
        assert_eq!(obstacle_cost(&s, &Pose::new(5.5, 5.0, 0.0)), 0.0);
        let single = scene(vec![Rect::new(6.0, 8.0, 0.0, 4.7)]);
        assert!((obstacle_cost(&single, &Pose::new(5.7, 5.0, 0.0)) - 0.04).abs() < 1e-12);
    }

    #[test]
    fn step_examples() {
        let cfg = VerifyConfig::default();
        let a = Pose::new(0.0, 0.0, 0.0);
        assert_eq!(step_cost(&a, &Pose::new(0.3, 0.0, 0.1), &cfg), 0.0);
        assert!((step_cost(&a, &Pose::new(0.7, 0.0, 0.0), &cfg) - 0.04).abs() < 1e-12);
        assert!((step_cost(&a, &Pose::new(0.6, 0.0, 0.4), &cfg) - 0.02).abs() < 1e-12);
    }

    #[test]
    fn trajectory_examples() {
        let s = scene(vec![Rect::new(6.0, 8.0, 0.0, 4.7)]);
        let cfg = VerifyConfig::default();
        let w = CostWeights { w_b: 1.0, w_o: 1.0, w_s: 1.0, alpha: 1.0 };
        let mut traj: Vec<Pose> = (0..12).map(|i| Pose::new(1.0 + 0.4 * i as f64, 5.0, 0.0)).collect();
        assert_eq!(trajectory_cost(&s, &traj, &w, &cfg).total, 0.0);
        traj.push(Pose::new(5.7, 5.0, 0.0));
        let c = trajectory_cost(&s, &traj, &w, &cfg);
        assert!((c.total - 0.04).abs() < 1e-12, "{c:?}");
        let w2 = CostWeights { w_b: 2.0, w_o: 2.0, w_s: 2.0, alpha: 1.0 };
        assert_eq!(trajectory_cost(&s, &traj, &w2, &cfg).total, 2.0 * c.total);
    }

    #[test]
    fn reward_examples() {
        assert_eq!(geometric_reward(0.0, 1.0), 1.0);
        assert_eq!(geometric_reward(1.0, 1.0), 0.5);
        assert!((geometric_reward(4.5, 2.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn advantage_examples() {
        let g = group_advantages(&[0.5, 0.5, 0.5], 1e-6).unwrap();
        assert_eq!(g.advantages, vec![0.0, 0.0, 0.0]);
        let g = group_advantages(&[1.0, 0.0], 1e-6).unwrap();
        assert_eq!(g.std, 0.5);
        let expect = 0.5 / (0.5 + 1e-6);
        assert!((g.advantages[0] - expect).abs() < 1e-15);
        assert!((g.advantages[1] + expect).abs() < 1e-15);
        assert!((expect - 0.999998).abs() < 1e-6);
        assert_eq!(group_advantages(&[], 1e-6), Err(RewardError::EmptyGroup));
        assert_eq!(group_advantages(&[0.3], 1e-6).unwrap().advantages, vec![0.0]);
    }

    #[test]
    fn objective_examples() {
        assert!((grpo_objective(&[0.0], &[-3.0], 2.0, 0.1).unwrap() + 0.2).abs() < 1e-15);
        assert_eq!(grpo_objective(&[1.0, -1.0], &[-1.0, -2.0], 0.0, 0.0).unwrap(), 0.5);
        assert_eq!(grpo_objective(&[0.0, 0.0], &[-1.0, -2.0], 0.0, 0.0).unwrap(), 0.0);
        assert_eq!(grpo_objective(&[0.0], &[-1.0, -2.0], 0.0, 0.0), Err(RewardError::LengthMismatch(1, 2)));
    }

    fn reward_group() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(1e-3f64..=1.0, 1..32)
    }

    proptest! {
        #[test]
        fn reward_strictly_decreasing(a in 0.0f64..1e3, b in 0.0f64..1e3, alpha in 0.01f64..10.0) {
            prop_assume!(a != b);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let (rl, rh) = (geometric_reward(lo, alpha), geometric_reward(hi, alpha));
            prop_assert!(rl > rh);
            prop_assert!(rh > 0.0 && rl <= 1.0);
        }

        #[test]
        fn advantages_sum_to_zero(r in reward_group()) {
            let g = group_advantages(&r, 1e-6).unwrap();
            prop_assert!(g.advantages.iter().sum::<f64>().abs() <= 1e-12);
        }

        #[test]
        fn advantages_shift_invariant(r in reward_group(), c in -0.5f64..0.5) {
            let a = group_advantages(&r, 1e-6).unwrap();
            let shifted: Vec<f64> = r.iter().map(|x| x + c).collect();
            let b = group_advantages(&shifted, 1e-6).unwrap();
            // Rounding of r + c is amplified by 1/std; keep groups with usable spread.
            prop_assume!(a.std == 0.0 || a.std > 1e-2);
            for (x, y) in a.advantages.iter().zip(&b.advantages) {
                prop_assert!((x - y).abs() <= 1e-12, "{} vs {}", x, y);
            }
        }

        #[test]
        fn scaling_preserves_order(r in reward_group(), c in 0.01f64..10.0) {
            let a = group_advantages(&r, 1e-6).unwrap();
            let scaled: Vec<f64> = r.iter().map(|x| x * c).collect();
            let b = group_advantages(&scaled, 1e-6).unwrap();
            for i in 0..r.len() {
                for j in 0..r.len() {
                    if r[i] < r[j] {
                        prop_assert!(a.advantages[i] < a.advantages[j]);
                        prop_assert!(b.advantages[i] < b.advantages[j]);
                    }
                }
            }
        }

        #[test]
        fn weight_linearity(xs in proptest::collection::vec((0.0f64..10.0, 0.0f64..10.0, -3.0f64..3.0), 1..10),
                            k in 0.1f64..5.0) {
            let s = scene(vec![Rect::new(4.0, 5.0, 2.0, 8.0)]);
            let cfg = VerifyConfig::default();
            let traj: Vec<Pose> = xs.iter().map(|&(x, y, p)| Pose::new(x, y, p)).collect();
            let w = CostWeights::default();
            let c = trajectory_cost(&s, &traj, &w, &cfg);
            let expect = w.w_b * c.boundary_sum + w.w_o * c.obstacle_sum + w.w_s * c.step_sum;
            prop_assert_eq!(c.total, expect);
            prop_assert!(c.boundary_sum >= 0.0 && c.obstacle_sum >= 0.0 && c.step_sum >= 0.0);
            let wk = CostWeights { w_b: k * w.w_b, w_o: k * w.w_o, w_s: k * w.w_s, alpha: 1.0 };
            let ck = trajectory_cost(&s, &traj, &wk, &cfg);
            prop_assert!((ck.total - k * c.total).abs() <= 1e-12 * (1.0 + c.total * k));
        }
    }
}
