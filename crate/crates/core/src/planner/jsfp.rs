//! Joint strategy fictitious play with inertia for finite games.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// A finite game in which every player can evaluate its utility for each of
/// its actions against a fixed profile of the others.
pub trait RepeatedGame {
    fn num_players(&self) -> usize;
    fn num_actions(&self, player: usize) -> usize;
    /// Utility of every action of `player`, the others playing `profile`.
    fn utilities(&self, player: usize, profile: &[usize]) -> Result<Vec<f64>>;
}

/// Learning parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerParams {
    /// Inertia: probability of keeping the current action.
    #[serde(default = "defaults::alpha")]
    pub alpha: f64,
    /// Probability that the repeated game at a step keeps optimizing.
    #[serde(default = "defaults::beta")]
    pub beta: f64,
    #[serde(default = "defaults::max_inner_iters")]
    pub max_inner_iters: usize,
    #[serde(default = "defaults::max_outer_iters")]
    pub max_outer_iters: usize,
    #[serde(default)]
    pub rng_seed: u64,
}

mod defaults {
    pub fn alpha() -> f64 {
        0.3
    }
    pub fn beta() -> f64 {
        0.85
    }
    pub fn max_inner_iters() -> usize {
        100
    }
    pub fn max_outer_iters() -> usize {
        50
    }
}

impl Default for LearnerParams {
    fn default() -> Self {
        LearnerParams {
            alpha: defaults::alpha(),
            beta: defaults::beta(),
            max_inner_iters: defaults::max_inner_iters(),
            max_outer_iters: defaults::max_outer_iters(),
            rng_seed: 0,
        }
    }
}

impl LearnerParams {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err("alpha must lie in (0, 1)".into());
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err("beta must lie in (0, 1)".into());
        }
        if self.max_inner_iters == 0 || self.max_outer_iters == 0 {
            return Err("iteration caps must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InnerOutcome {
    /// The final profile is a best response for every player.
    pub converged: bool,
    pub iterations: usize,
    pub utility_evals: usize,
    pub changed: bool,
    pub cap_hit: bool,
}

fn tie_tol(v: f64) -> f64 {
    1e-12 * v.abs().max(1.0)
}

/// Index of the maximum; the incumbent wins ties, then the lowest index.
pub fn argmax_tiebreak(values: &[f64], incumbent: usize) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    let top = values[best];
    if values[incumbent] >= top - tie_tol(top) {
        return incumbent;
    }
    values
        .iter()
        .position(|v| *v >= top - tie_tol(top))
        .unwrap_or(best)
}

/// True when `profile[p]` is a best response in `utils` for every player.
fn is_best_response(utils: &[Vec<f64>], profile: &[usize]) -> bool {
    utils.iter().zip(profile).all(|(u, &a)| {
        let top = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        u[a] >= top - tie_tol(top)
    })
}

/// Runs the repeated game until the profile is a pure equilibrium, the
/// continuation draw fails, or `max_inner_iters` is reached.
///
/// Running-average utilities start at zero. An iteration in which the
/// continuation draw fails still updates the averages but changes no action.
pub fn run_jsfp<G: RepeatedGame + ?Sized, R: Rng + ?Sized>(
    game: &G,
    profile: &mut [usize],
    params: &LearnerParams,
    rng: &mut R,
) -> Result<InnerOutcome> {
    let n = game.num_players();
    debug_assert_eq!(profile.len(), n);
    let mut averages: Vec<Vec<f64>> = (0..n).map(|p| vec![0.0; game.num_actions(p)]).collect();
    let mut out = InnerOutcome::default();
    let mut exit = false;
    let mut t = 0usize;
    while !exit {
        if out.iterations >= params.max_inner_iters {
            out.cap_hit = true;
            break;
        }
        if rng.random::<f64>() > params.beta {
            exit = true;
        }
        t += 1;
        out.iterations += 1;
        let mut utils = Vec::with_capacity(n);
        for p in 0..n {
            let u = game.utilities(p, profile)?;
            out.utility_evals += u.len();
            let w = 1.0 / t as f64;
            for (avg, v) in averages[p].iter_mut().zip(&u) {
                *avg = (1.0 - w) * *avg + w * v;
            }
            utils.push(u);
        }
        let mut changed = false;
        for p in 0..n {
            let best = argmax_tiebreak(&averages[p], profile[p]);
            let draw = rng.random::<f64>();
            if draw > params.alpha && !exit && best != profile[p] {
                profile[p] = best;
                changed = true;
            }
        }
        out.changed |= changed;
        out.converged = !changed && is_best_response(&utils, profile);
        exit |= out.converged;
    }
    if !out.converged && out.iterations > 0 {
        let utils = (0..n)
            .map(|p| game.utilities(p, profile))
            .collect::<Result<Vec<_>>>()?;
        out.converged = is_best_response(&utils, profile);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Identical-interest game given by a payoff table over joint profiles.
    struct TableGame {
        actions: Vec<usize>,
        payoff: Vec<f64>,
    }

    impl TableGame {
        fn index(&self, profile: &[usize]) -> usize {
            profile
                .iter()
                .zip(&self.actions)
                .fold(0, |acc, (a, n)| acc * n + a)
        }
    }

    impl RepeatedGame for TableGame {
        fn num_players(&self) -> usize {
            self.actions.len()
        }
        fn num_actions(&self, p: usize) -> usize {
            self.actions[p]
        }
        fn utilities(&self, p: usize, profile: &[usize]) -> Result<Vec<f64>> {
            let mut prof = profile.to_vec();
            Ok((0..self.actions[p])
                .map(|a| {
                    prof[p] = a;
                    self.payoff[self.index(&prof)]
                })
                .collect())
        }
    }

    #[test]
    fn tie_breaking() {
        assert_eq!(argmax_tiebreak(&[1.0, 3.0, 3.0], 0), 1);
        assert_eq!(argmax_tiebreak(&[1.0, 3.0, 3.0], 2), 2);
        assert_eq!(argmax_tiebreak(&[0.0, 0.0], 1), 1);
        assert_eq!(argmax_tiebreak(&[5.0, 0.0], 1), 0);
    }

    #[test]
    fn single_player_best_response_fast() {
        let g = TableGame {
            actions: vec![4],
            payoff: vec![0.1, 0.7, 0.3, 0.2],
        };
        let params = LearnerParams {
            alpha: 0.3,
            beta: 0.999,
            ..Default::default()
        };
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut prof = vec![0];
            let out = run_jsfp(&g, &mut prof, &params, &mut rng).unwrap();
            assert_eq!(prof, vec![1]);
            assert!(out.converged);
        }
    }

    #[test]
    fn full_inertia_keeps_profile() {
        let g = TableGame {
            actions: vec![3, 3],
            payoff: (0..9).map(|i| i as f64).collect(),
        };
        let params = LearnerParams {
            alpha: 0.999,
            beta: 0.5,
            ..Default::default()
        };
        let mut unchanged = 0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut prof = vec![0, 0];
            run_jsfp(&g, &mut prof, &params, &mut rng).unwrap();
            if prof == vec![0, 0] {
                unchanged += 1;
            }
        }
        assert!(unchanged >= 95, "{unchanged}");
    }

    #[test]
    fn converged_profiles_are_equilibria() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for seed in 0..100u64 {
            let actions = vec![3, 4, 2];
            let total: usize = actions.iter().product();
            let payoff: Vec<f64> = (0..total).map(|_| rng.random::<f64>()).collect();
            let g = TableGame { actions, payoff };
            let mut prof = vec![0, 0, 0];
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let out = run_jsfp(&g, &mut prof, &LearnerParams::default(), &mut r).unwrap();
            if out.converged {
                for p in 0..3 {
                    let u = g.utilities(p, &prof).unwrap();
                    let top = u.iter().cloned().fold(f64::MIN, f64::max);
                    assert!(u[prof[p]] >= top - 1e-12);
                }
            }
        }
    }
}
