//! Execution-phase rollouts: actors only, no exploration noise, no critics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::{episode_seed, MultiRatEnv, PenAction, RanAction, Scenario};
use crate::marl::trainer::{TrainError, Teams};
use crate::metrics::{EpisodeMetrics, MetricsAccumulator};
use crate::Scalar;

/// Noise-free rollouts of the trained actors. Episodes are seeded from
/// `base_seed` by index, so different policies evaluated with the same base
/// seed see identical environment draws (paired comparison).
pub fn evaluate(
    teams: &Teams,
    scenario: &Scenario,
    episodes: usize,
    max_steps: usize,
    base_seed: u64,
) -> Result<Vec<EpisodeMetrics>, TrainError> {
    let mut env = MultiRatEnv::new(scenario.clone()).map_err(|source| TrainError::Env { episode: 0, source })?;
    // act() never draws with a zero noise scale; the RNG is a formality.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut out = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        let (pen_obs, ran_obs) = env.reset(episode_seed(base_seed, episode));
        let mut pen_obs: Vec<Vec<Scalar>> = pen_obs.iter().map(|o| o.to_vec()).collect();
        let mut ran_obs: Vec<Vec<Scalar>> = ran_obs.iter().map(|o| o.to_vec()).collect();
        let mut acc = MetricsAccumulator::new(episode, scenario.num_pens(), scenario.num_rans(), scenario.step_duration_s);
        for _ in 0..max_steps {
            let pen_action_vecs = teams
                .pens
                .act(&pen_obs, 0.0, &mut rng)
                .map_err(|source| TrainError::Net { episode, source })?;
            let ran_action_vecs = teams
                .rans
                .act(&ran_obs, 0.0, &mut rng)
                .map_err(|source| TrainError::Net { episode, source })?;
            let pen_actions: Vec<PenAction> = pen_action_vecs.iter().map(|v| PenAction::from_vec(v)).collect();
            let ran_actions: Vec<RanAction> = ran_action_vecs.iter().map(|v| RanAction::from_vec(v)).collect();
            let result = env
                .step(&pen_actions, &ran_actions)
                .map_err(|source| TrainError::Env { episode, source })?;
            acc.record_step(&result);
            pen_obs = result.pen_obs.iter().map(|o| o.to_vec()).collect();
            ran_obs = result.ran_obs.iter().map(|o| o.to_vec()).collect();
            if result.done {
                break;
            }
        }
        out.push(acc.finish(env.state().clamp_events));
    }
    Ok(out)
}
