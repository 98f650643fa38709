//! Runs a baseline policy inside the same environment used by the learned
//! policies, with the identical metric schema.

use crate::baselines::policies::{decide, BaselineError, GridSpec, PolicyOutcome, PolicyTag, ScenarioSnapshot};
use crate::env::{episode_seed, EnvError, MultiRatEnv, PenAction, RanAction, Scenario};
use crate::metrics::{EpisodeMetrics, MetricsAccumulator};
use crate::Scalar;

#[derive(Debug, thiserror::Error)]
pub enum BaselineRunError {
    #[error("episode {episode}: {source}")]
    Env { episode: usize, source: EnvError },
    #[error("episode {episode}: {source}")]
    Policy { episode: usize, source: BaselineError },
}

/// Knobs of a baseline run.
#[derive(Debug, Clone, Copy)]
pub struct BaselineParams {
    pub grid: GridSpec,
    pub onsra_max_rounds: usize,
    pub onsra_tol: Scalar,
    /// Extra recomputation cadence in steps; 0 recomputes only when the
    /// seizure or alive set changes.
    pub recompute_interval_steps: usize,
}

fn snapshot_of(env: &MultiRatEnv) -> ScenarioSnapshot<'_> {
    ScenarioSnapshot {
        scenario: env.scenario(),
        fading_mag_sq: env.state().fading_mag_sq.clone(),
        seizure: env.state().seizure_active.clone(),
        alive: env.state().pens_alive.clone(),
    }
}

fn actions_of(outcome: &PolicyOutcome, n: usize, m: usize) -> (Vec<PenAction>, Vec<RanAction>) {
    let pen_actions = (0..n)
        .map(|i| PenAction {
            utilization: outcome.decision.utilization[i].clone(),
            ratio: outcome.decision.ratios[i],
        })
        .collect();
    let ran_actions = (0..m)
        .map(|j| RanAction {
            bw_fractions: (0..n).map(|i| outcome.decision.bw_fractions[i][j]).collect(),
        })
        .collect();
    (pen_actions, ran_actions)
}

/// Episodic rollout of one baseline. Decisions are recomputed whenever any
/// PEN's seizure status or the alive set changes (the reward weights change
/// there), plus on the optional fixed cadence.
pub fn run_baseline(
    tag: PolicyTag,
    scenario: &Scenario,
    params: &BaselineParams,
    episodes: usize,
    max_steps: usize,
    base_seed: u64,
) -> Result<Vec<EpisodeMetrics>, BaselineRunError> {
    let mut env = MultiRatEnv::new(scenario.clone()).map_err(|source| BaselineRunError::Env { episode: 0, source })?;
    let mut out = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        env.reset(episode_seed(base_seed, episode));
        let mut acc = MetricsAccumulator::new(episode, scenario.num_pens(), scenario.num_rans(), scenario.step_duration_s);
        let mut regime = (env.state().seizure_active.clone(), env.state().pens_alive.clone());
        let mut outcome = decide(tag, &snapshot_of(&env), &params.grid, params.onsra_max_rounds, params.onsra_tol)
            .map_err(|source| BaselineRunError::Policy { episode, source })?;
        for step in 0..max_steps {
            let cadence_hit = params.recompute_interval_steps > 0 && step > 0 && step % params.recompute_interval_steps == 0;
            let now = (env.state().seizure_active.clone(), env.state().pens_alive.clone());
            if now != regime || cadence_hit {
                regime = now;
                outcome = decide(tag, &snapshot_of(&env), &params.grid, params.onsra_max_rounds, params.onsra_tol)
                    .map_err(|source| BaselineRunError::Policy { episode, source })?;
            }
            let (pen_actions, ran_actions) = actions_of(&outcome, scenario.num_pens(), scenario.num_rans());
            let result = env
                .step(&pen_actions, &ran_actions)
                .map_err(|source| BaselineRunError::Env { episode, source })?;
            acc.record_step(&result);
            if result.done {
                break;
            }
        }
        out.push(acc.finish(env.state().clamp_events));
    }
    Ok(out)
}
