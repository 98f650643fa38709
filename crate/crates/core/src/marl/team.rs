//! A team of agents with per-agent actors and centralized per-agent critics.
//!
//! Every critic in a team reads the team's joint observation and joint
//! action; actors read only their own observation slice. The other team is
//! part of the environment and never appears in a critic's input.

use std::ops::Range;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use crate::marl::buffer::{Experience, ReplayBuffer};
use crate::nn::{clip_global_norm, Head, HeadActivation, HiddenActivation, MlpSpec, NnError, StepDirection};
use crate::{AdamConfig, MlpNet, Scalar};

/// One actor/critic pair.
#[derive(Debug, Clone)]
pub struct Agent {
    pub actor: MlpNet,
    pub critic: MlpNet,
}

/// Optimizer settings for one team's updates.
#[derive(Debug, Clone, Copy)]
pub struct UpdateConfig {
    pub critic: AdamConfig,
    pub actor: AdamConfig,
    pub gamma: Scalar,
    pub grad_clip_norm: Scalar,
}

#[derive(Debug)]
pub struct Team {
    pub name: &'static str,
    pub agents: Vec<Agent>,
    pub buffer: ReplayBuffer,
    obs_width: usize,
    action_width: usize,
    /// Counts every critic evaluation; execution-phase code must not move it.
    critic_evals: AtomicU64,
}

impl Clone for Team {
    fn clone(&self) -> Self {
        Self {
            name: self.name,
            agents: self.agents.clone(),
            buffer: self.buffer.clone(),
            obs_width: self.obs_width,
            action_width: self.action_width,
            critic_evals: AtomicU64::new(self.critic_evals.load(Ordering::Relaxed)),
        }
    }
}

impl Team {
    pub fn new(
        name: &'static str,
        agents: Vec<Agent>,
        buffer_capacity: usize,
        obs_width: usize,
        action_width: usize,
    ) -> Result<Self, NnError> {
        let n = agents.len();
        for agent in &agents {
            if agent.actor.spec().input_width() != obs_width {
                return Err(NnError::InvalidSpec("actor input width must equal the agent observation width"));
            }
            if agent.critic.spec().input_width() != n * (obs_width + action_width) {
                return Err(NnError::InvalidSpec("critic input width must equal joint obs + joint action width"));
            }
            if agent.actor.spec().output_width() != action_width {
                return Err(NnError::InvalidSpec("actor output width must equal the action width"));
            }
        }
        Ok(Self {
            name,
            agents,
            buffer: ReplayBuffer::new(buffer_capacity),
            obs_width,
            action_width,
            critic_evals: AtomicU64::new(0),
        })
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn obs_width(&self) -> usize {
        self.obs_width
    }

    pub fn action_width(&self) -> usize {
        self.action_width
    }

    pub fn joint_obs_width(&self) -> usize {
        self.obs_width * self.agents.len()
    }

    pub fn obs_slice(&self, agent: usize) -> Range<usize> {
        agent * self.obs_width..(agent + 1) * self.obs_width
    }

    pub fn action_slice(&self, agent: usize) -> Range<usize> {
        agent * self.action_width..(agent + 1) * self.action_width
    }

    /// Total critic forward passes so far (training-phase instrumentation).
    pub fn critic_eval_count(&self) -> u64 {
        self.critic_evals.load(Ordering::Relaxed)
    }

    fn critic_forward(&self, agent: usize, input: &[Scalar], target: bool) -> Result<Scalar, NnError> {
        self.critic_evals.fetch_add(1, Ordering::Relaxed);
        let critic = &self.agents[agent].critic;
        let out = if target { critic.forward_target(input)? } else { critic.forward(input)? };
        Ok(out[0])
    }

    /// Decentralized action selection: each agent sees only its own
    /// observation. Exploration noise perturbs pre-activations so the head
    /// projections keep actions feasible.
    pub fn act<G: Rng>(
        &self,
        per_agent_obs: &[Vec<Scalar>],
        noise_scale: Scalar,
        rng: &mut G,
    ) -> Result<Vec<Vec<Scalar>>, NnError> {
        debug_assert_eq!(per_agent_obs.len(), self.agents.len());
        self.agents
            .iter()
            .zip(per_agent_obs.iter())
            .map(|(agent, obs)| agent.actor.forward_noisy(obs, noise_scale, rng))
            .collect()
    }

    /// Joint next action from every agent's target actor.
    fn joint_target_action(&self, joint_next_obs: &[Scalar]) -> Result<Vec<Scalar>, NnError> {
        let mut joint = Vec::with_capacity(self.agents.len() * self.action_width);
        for (k, agent) in self.agents.iter().enumerate() {
            let obs = &joint_next_obs[self.obs_slice(k)];
            joint.extend(agent.actor.forward_target(obs)?);
        }
        Ok(joint)
    }

    /// TD targets `y = r + gamma (1 - d) Q_target(o', a')` for one agent,
    /// with `a'` from the team's target actors.
    pub fn td_targets(&self, agent: usize, batch: &[&Experience], gamma: Scalar) -> Result<Vec<Scalar>, NnError> {
        let mut targets = Vec::with_capacity(batch.len());
        for exp in batch {
            let next_action = self.joint_target_action(&exp.joint_next_obs)?;
            let mut input = exp.joint_next_obs.clone();
            input.extend(next_action);
            let q = self.critic_forward(agent, &input, true)?;
            let done = exp.done_flags[agent];
            targets.push(exp.rewards[agent] + gamma * (1.0 - done) * q);
        }
        Ok(targets)
    }

    /// Mean-squared Bellman error of one agent's critic against `targets`.
    pub fn critic_loss(&self, agent: usize, batch: &[&Experience], targets: &[Scalar]) -> Result<Scalar, NnError> {
        let mut loss = 0.0;
        for (exp, y) in batch.iter().zip(targets.iter()) {
            let mut input = exp.joint_obs.clone();
            input.extend_from_slice(&exp.joint_action);
            let q = self.critic_forward(agent, &input, false)?;
            loss += (q - y) * (q - y);
        }
        Ok(loss / batch.len() as Scalar)
    }

    /// Batch gradient of the MSBE with respect to one critic's parameters.
    /// Returns the gradient and the loss value.
    pub fn critic_batch_gradient(
        &self,
        agent: usize,
        batch: &[&Experience],
        targets: &[Scalar],
    ) -> Result<(Vec<Scalar>, Scalar), NnError> {
        let critic = &self.agents[agent].critic;
        let mut grad = vec![0.0; critic.params().len()];
        let mut loss = 0.0;
        let scale = 1.0 / batch.len() as Scalar;
        for (exp, y) in batch.iter().zip(targets.iter()) {
            let mut input = exp.joint_obs.clone();
            input.extend_from_slice(&exp.joint_action);
            let q = self.critic_forward(agent, &input, false)?;
            let err = q - y;
            loss += err * err * scale;
            let g = critic.gradient(&input, &[2.0 * err * scale])?;
            for (acc, gv) in grad.iter_mut().zip(g.params.iter()) {
                *acc += gv;
            }
        }
        Ok((grad, loss))
    }

    /// Batch gradient of the mean critic value with respect to one actor's
    /// parameters, chaining the critic's input gradient through the actor.
    /// The joint action uses this agent's online actor output in its own
    /// slice and the stored batch actions elsewhere. Returns the gradient
    /// and the mean Q value.
    pub fn actor_batch_gradient(&self, agent: usize, batch: &[&Experience]) -> Result<(Vec<Scalar>, Scalar), NnError> {
        let joint_obs_width = self.joint_obs_width();
        let actor = &self.agents[agent].actor;
        let critic = &self.agents[agent].critic;
        let mut grad = vec![0.0; actor.params().len()];
        let mut mean_q = 0.0;
        let scale = 1.0 / batch.len() as Scalar;
        let action_range = self.action_slice(agent);
        for exp in batch {
            let own_obs = &exp.joint_obs[self.obs_slice(agent)];
            let own_action = actor.forward(own_obs)?;
            let mut input = exp.joint_obs.clone();
            input.extend_from_slice(&exp.joint_action);
            input[joint_obs_width + action_range.start..joint_obs_width + action_range.end]
                .copy_from_slice(&own_action);
            mean_q += self.critic_forward(agent, &input, false)? * scale;
            let dq_dinput = critic.input_gradient(&input, &[1.0])?;
            let upstream: Vec<Scalar> = dq_dinput
                [joint_obs_width + action_range.start..joint_obs_width + action_range.end]
                .iter()
                .map(|g| g * scale)
                .collect();
            let g = actor.gradient(own_obs, &upstream)?;
            for (acc, gv) in grad.iter_mut().zip(g.params.iter()) {
                *acc += gv;
            }
        }
        Ok((grad, mean_q))
    }

    /// One clipped Adam descent step on the MSBE. Returns the loss.
    pub fn update_critic(
        &mut self,
        agent: usize,
        batch: &[&Experience],
        targets: &[Scalar],
        cfg: &UpdateConfig,
    ) -> Result<Scalar, NnError> {
        let (mut grad, loss) = self.critic_batch_gradient(agent, batch, targets)?;
        clip_global_norm(&mut grad, cfg.grad_clip_norm);
        self.agents[agent].critic.adam_step(&grad, &cfg.critic, StepDirection::Descend)?;
        Ok(loss)
    }

    /// One clipped Adam ascent step on the batch-mean critic value.
    /// Returns the mean Q before the step.
    pub fn update_actor(&mut self, agent: usize, batch: &[&Experience], cfg: &UpdateConfig) -> Result<Scalar, NnError> {
        let (mut grad, mean_q) = self.actor_batch_gradient(agent, batch)?;
        clip_global_norm(&mut grad, cfg.grad_clip_norm);
        self.agents[agent].actor.adam_step(&grad, &cfg.actor, StepDirection::Ascend)?;
        Ok(mean_q)
    }

    pub fn soft_update_agent(&mut self, agent: usize, epsilon: Scalar) -> Result<(), NnError> {
        self.agents[agent].actor.soft_update(epsilon)?;
        self.agents[agent].critic.soft_update(epsilon)?;
        Ok(())
    }
}

/// Builds the PEN team: simplex utilization head plus a ratio head capped at
/// `kappa_max`, and critics over the team-joint observation/action.
pub fn build_pen_team(
    num_pens: usize,
    num_rans: usize,
    hidden: &[usize],
    kappa_max: Scalar,
    buffer_capacity: usize,
    seed: u64,
) -> Result<Team, NnError> {
    let obs_width = 3 * num_rans + 3;
    let action_width = num_rans + 1;
    let heads = vec![
        Head { width: num_rans, activation: HeadActivation::Simplex },
        Head { width: 1, activation: HeadActivation::UnitInterval { hi: kappa_max } },
    ];
    build_team("pen", num_pens, obs_width, action_width, hidden, heads, buffer_capacity, seed)
}

/// Builds the RAN team: one simplex head over the PENs.
pub fn build_ran_team(
    num_pens: usize,
    num_rans: usize,
    hidden: &[usize],
    buffer_capacity: usize,
    seed: u64,
) -> Result<Team, NnError> {
    let obs_width = num_pens;
    let action_width = num_pens;
    let heads = vec![Head { width: num_pens, activation: HeadActivation::Simplex }];
    build_team("ran", num_rans, obs_width, action_width, hidden, heads, buffer_capacity, seed)
}

#[allow(clippy::too_many_arguments)]
fn build_team(
    name: &'static str,
    num_agents: usize,
    obs_width: usize,
    action_width: usize,
    hidden: &[usize],
    action_heads: Vec<Head>,
    buffer_capacity: usize,
    seed: u64,
) -> Result<Team, NnError> {
    let mut actor_sizes = vec![obs_width];
    actor_sizes.extend_from_slice(hidden);
    actor_sizes.push(action_width);
    let mut critic_sizes = vec![num_agents * (obs_width + action_width)];
    critic_sizes.extend_from_slice(hidden);
    critic_sizes.push(1);

    let actor_spec = MlpSpec::new(actor_sizes, HiddenActivation::Relu, action_heads)?;
    let critic_spec = MlpSpec::new(critic_sizes, HiddenActivation::Relu, vec![Head { width: 1, activation: HeadActivation::Linear }])?;

    let agents = (0..num_agents)
        .map(|k| Agent {
            actor: MlpNet::init(actor_spec.clone(), seed.wrapping_add(2 * k as u64)),
            critic: MlpNet::init(critic_spec.clone(), seed.wrapping_add(2 * k as u64 + 1)),
        })
        .collect();
    Team::new(name, agents, buffer_capacity, obs_width, action_width)
}
