//! Episodic partially observable Markov game over PENs and RANs.
//!
//! Each step the PENs choose a per-RAN utilization split and a compression
//! ratio, the RANs choose per-PEN bandwidth fractions, and the environment
//! realizes rates, energies, latencies and costs through the radio module,
//! drains batteries, advances the seizure process, and produces per-agent
//! observations and rewards. The episode terminates when every PEN battery
//! is depleted.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use thiserror::Error;

use crate::compression::CompressionDecision;
use crate::radio::{channel_gain, link_cost, link_energy, link_latency, LinkState};
use crate::{ChannelParams, DistortionModel, RanProfile, Scalar};

/// Derives the reset seed of episode `episode` from a base seed (splitmix64
/// finalizer). Every runner uses this, so identical base seeds give paired
/// environment draws across policies.
pub fn episode_seed(base_seed: u64, episode: usize) -> u64 {
    let mut z = base_seed.wrapping_add((episode as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Simplex-sum tolerance accepted on incoming actions.
const SIMPLEX_TOL: Scalar = 1e-6;
/// Slack on the per-link transmission-time budget check.
const CAPACITY_SLACK: Scalar = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("expected {want} {kind} actions, got {got}")]
    ActionCount { kind: &'static str, want: usize, got: usize },
    #[error("{kind} action {index} has width {got}, expected {want}")]
    ActionWidth { kind: &'static str, index: usize, want: usize, got: usize },
    #[error("{kind} action {index} is not on the simplex (sum {sum})")]
    NotSimplex { kind: &'static str, index: usize, sum: Scalar },
    #[error("pen action {index} ratio {ratio} outside [0, {max}]")]
    RatioOutOfRange { index: usize, ratio: Scalar, max: Scalar },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

/// Relative significance of energy, cost, latency and distortion when the
/// patient is in the normal state. Must sum to one.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricWeights {
    pub energy: Scalar,
    pub cost: Scalar,
    pub latency: Scalar,
    pub distortion: Scalar,
}

/// Latency/distortion emphasis used while a seizure is active.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SeizureWeights {
    pub latency: Scalar,
    pub distortion: Scalar,
}

/// Static per-PEN parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PenProfile {
    pub id: usize,
    pub raw_bits_per_step: Scalar,
    pub battery_capacity_j: Scalar,
    pub seizure_prob: Scalar,
    pub weights_normal: MetricWeights,
    pub weights_seizure: SeizureWeights,
}

impl PenProfile {
    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.raw_bits_per_step >= 0.0) {
            return Err(EnvError::InvalidScenario("raw_bits_per_step must be >= 0".into()));
        }
        if !(self.battery_capacity_j > 0.0) {
            return Err(EnvError::InvalidScenario("battery_capacity_j must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.seizure_prob) {
            return Err(EnvError::InvalidScenario("seizure_prob must lie in [0, 1]".into()));
        }
        let w = &self.weights_normal;
        let sum = w.energy + w.cost + w.latency + w.distortion;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(EnvError::InvalidScenario(format!("normal metric weights must sum to 1, got {sum}")));
        }
        for v in [w.energy, w.cost, w.latency, w.distortion, self.weights_seizure.latency, self.weights_seizure.distortion] {
            if !(0.0..=1.0).contains(&v) {
                return Err(EnvError::InvalidScenario("metric weights must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }
}

/// Fixed normalization maxima for the observation scales.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormConstants {
    pub energy_j: Scalar,
    pub cost: Scalar,
    pub latency_s: Scalar,
}

/// Everything static about an experiment's world.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub pens: Vec<PenProfile>,
    pub rans: Vec<RanProfile>,
    pub channel: ChannelParams,
    pub distortion: DistortionModel,
    pub norm: NormConstants,
    /// Per-link transmission-time budget per step (T_ij), seconds.
    pub resource_share_s: Scalar,
    /// Wall-clock seconds represented by one environment step.
    pub step_duration_s: Scalar,
    /// Mean seizure duration in steps (geometric, support >= 1).
    pub seizure_mean_steps: Scalar,
    /// Utilization above this counts as "sending data" on a link.
    pub connection_threshold: Scalar,
    /// Compression ratio assumed for the placeholder observation at reset.
    pub kappa_init: Scalar,
}

impl Scenario {
    pub fn num_pens(&self) -> usize {
        self.pens.len()
    }

    pub fn num_rans(&self) -> usize {
        self.rans.len()
    }

    pub fn kappa_max(&self) -> Scalar {
        self.distortion.ratio_max
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.pens.is_empty() || self.rans.is_empty() {
            return Err(EnvError::InvalidScenario("need at least one PEN and one RAN".into()));
        }
        for pen in &self.pens {
            pen.validate()?;
        }
        for ran in &self.rans {
            ran.validate().map_err(|e| EnvError::InvalidScenario(e.to_string()))?;
        }
        if !(self.norm.energy_j > 0.0 && self.norm.cost > 0.0 && self.norm.latency_s > 0.0) {
            return Err(EnvError::InvalidScenario("normalization constants must be > 0".into()));
        }
        if !(self.resource_share_s > 0.0) {
            return Err(EnvError::InvalidScenario("resource_share_s must be > 0".into()));
        }
        if !(self.step_duration_s > 0.0) {
            return Err(EnvError::InvalidScenario("step_duration_s must be > 0".into()));
        }
        if !(self.seizure_mean_steps >= 1.0) {
            return Err(EnvError::InvalidScenario("seizure_mean_steps must be >= 1".into()));
        }
        if !(self.connection_threshold > 0.0 && self.connection_threshold < 1.0) {
            return Err(EnvError::InvalidScenario("connection_threshold must lie in (0, 1)".into()));
        }
        if !(0.0..=self.kappa_max()).contains(&self.kappa_init) {
            return Err(EnvError::InvalidScenario("kappa_init must lie in [0, kappa_max]".into()));
        }
        Ok(())
    }
}

/// Mutable world state for one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub step: u64,
    pub battery_j: Vec<Scalar>,
    pub seizure_active: Vec<bool>,
    pub seizure_remaining: Vec<u32>,
    /// Squared fading magnitudes for the upcoming step, N x M.
    pub fading_mag_sq: Vec<Vec<Scalar>>,
    pub last_bw_fractions: Vec<Vec<Scalar>>,
    pub last_utilization: Vec<Vec<Scalar>>,
    pub last_ratios: Vec<Scalar>,
    pub pens_alive: Vec<bool>,
    /// Observation/distortion clamps seen so far (diagnostic).
    pub clamp_events: u64,
}

/// Local observation of one PEN: normalized per-RAN metrics realized by its
/// previous action, plus distortion, seizure flag and battery level.
#[derive(Debug, Clone, PartialEq)]
pub struct PenObservation {
    pub norm_energy: Vec<Scalar>,
    pub norm_cost: Vec<Scalar>,
    pub norm_latency: Vec<Scalar>,
    pub norm_distortion: Scalar,
    pub seizure: Scalar,
    pub norm_battery: Scalar,
}

impl PenObservation {
    pub fn width(num_rans: usize) -> usize {
        3 * num_rans + 3
    }

    pub fn zeros(num_rans: usize) -> Self {
        Self {
            norm_energy: vec![0.0; num_rans],
            norm_cost: vec![0.0; num_rans],
            norm_latency: vec![0.0; num_rans],
            norm_distortion: 0.0,
            seizure: 0.0,
            norm_battery: 0.0,
        }
    }

    /// Flattens to `[energy(M), cost(M), latency(M), distortion, seizure, battery]`.
    pub fn to_vec(&self) -> Vec<Scalar> {
        let mut v = Vec::with_capacity(Self::width(self.norm_energy.len()));
        v.extend_from_slice(&self.norm_energy);
        v.extend_from_slice(&self.norm_cost);
        v.extend_from_slice(&self.norm_latency);
        v.push(self.norm_distortion);
        v.push(self.seizure);
        v.push(self.norm_battery);
        v
    }
}

/// Local observation of one RAN: which PENs routed data through it.
#[derive(Debug, Clone, PartialEq)]
pub struct RanObservation {
    pub pen_connected: Vec<Scalar>,
}

impl RanObservation {
    pub fn to_vec(&self) -> Vec<Scalar> {
        self.pen_connected.clone()
    }
}

/// One PEN's action: utilization split over RANs plus compression ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct PenAction {
    pub utilization: Vec<Scalar>,
    pub ratio: Scalar,
}

impl PenAction {
    pub fn width(num_rans: usize) -> usize {
        num_rans + 1
    }

    pub fn from_vec(v: &[Scalar]) -> Self {
        let (util, ratio) = v.split_at(v.len() - 1);
        Self { utilization: util.to_vec(), ratio: ratio[0] }
    }

    pub fn to_vec(&self) -> Vec<Scalar> {
        let mut v = self.utilization.clone();
        v.push(self.ratio);
        v
    }
}

/// One RAN's action: bandwidth fractions granted to each PEN.
#[derive(Debug, Clone, PartialEq)]
pub struct RanAction {
    pub bw_fractions: Vec<Scalar>,
}

impl RanAction {
    pub fn from_vec(v: &[Scalar]) -> Self {
        Self { bw_fractions: v.to_vec() }
    }

    pub fn to_vec(&self) -> Vec<Scalar> {
        self.bw_fractions.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintTag {
    /// Data routed over a link with no usable rate.
    ZeroBandwidthLink,
    /// Transmission time exceeded the per-link resource share.
    CapacityExceeded,
}

impl std::fmt::Display for ConstraintTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConstraintTag::ZeroBandwidthLink => write!(f, "zero-bandwidth-link"),
            ConstraintTag::CapacityExceeded => write!(f, "capacity-exceeded"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub tag: ConstraintTag,
    pub ran: usize,
}

/// Normalized metrics realized by one PEN in one step, as used by the reward.
#[derive(Debug, Clone, PartialEq)]
pub struct PenNormMetrics {
    pub utilization: Vec<Scalar>,
    pub energy: Vec<Scalar>,
    pub cost: Vec<Scalar>,
    pub latency: Vec<Scalar>,
    pub distortion: Scalar,
    pub battery: Scalar,
}

/// Raw per-step outcome for one PEN, kept for the metrics sink.
#[derive(Debug, Clone, PartialEq)]
pub struct PenStepRecord {
    /// Whether the PEN acted this step (was alive at step start).
    pub acted: bool,
    pub energy_j: Scalar,
    /// Utilization-weighted latency over links that carried data.
    pub latency_s: Scalar,
    pub cost: Scalar,
    pub distortion: Scalar,
    pub ratio: Scalar,
    pub seizure: bool,
    /// Sum of normalized per-link latencies (the seizure-branch reward term).
    pub norm_latency_sum: Scalar,
}

impl PenStepRecord {
    fn inactive() -> Self {
        Self {
            acted: false,
            energy_j: 0.0,
            latency_s: 0.0,
            cost: 0.0,
            distortion: 0.0,
            ratio: 0.0,
            seizure: false,
            norm_latency_sum: 0.0,
        }
    }
}

/// Outcome of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub pen_obs: Vec<PenObservation>,
    pub ran_obs: Vec<RanObservation>,
    pub pen_rewards: Vec<Scalar>,
    pub ran_rewards: Vec<Scalar>,
    pub done: bool,
    pub violations: Vec<Vec<Violation>>,
    pub records: Vec<PenStepRecord>,
}

/// Everything one PEN's action realizes over the links in one step.
#[derive(Debug, Clone)]
pub struct PenRealization {
    pub used: Vec<bool>,
    pub rate_bps: Vec<Scalar>,
    pub energy_j: Vec<Scalar>,
    pub latency_s: Vec<Scalar>,
    pub cost: Vec<Scalar>,
    pub norm_energy: Vec<Scalar>,
    pub norm_cost: Vec<Scalar>,
    pub norm_latency: Vec<Scalar>,
    pub distortion: Scalar,
    pub violations: Vec<Violation>,
    pub total_energy_j: Scalar,
    pub weighted_latency_s: Scalar,
    pub norm_latency_sum: Scalar,
    pub clamp_events: u64,
}

fn normalize(raw: Scalar, max: Scalar, clamps: &mut u64) -> Scalar {
    let scaled = raw / max;
    if scaled > 1.0 {
        *clamps += 1;
        1.0
    } else {
        scaled.max(0.0)
    }
}

/// Realizes one PEN's action against the current channel draws: per-link
/// rates, energies, latencies and costs, their normalized forms, and any
/// constraint violations.
///
/// A link carries data iff its utilization exceeds the connection threshold.
/// A carried link with zero rate transmits nothing (no energy, no cost) and
/// reports ceiling latency; a carried link whose transmission time exceeds
/// the resource share is a capacity violation but still spends energy.
pub fn realize_pen_step(
    scenario: &Scenario,
    pen_index: usize,
    fading_row: &[Scalar],
    theta_row: &[Scalar],
    utilization: &[Scalar],
    ratio: Scalar,
) -> PenRealization {
    let m = scenario.num_rans();
    let pen = &scenario.pens[pen_index];
    let mut clamps = 0u64;
    let (distortion, dist_clamped) = scenario
        .distortion
        .distortion_with_diag(ratio)
        .expect("ratio validated before realization");
    if dist_clamped {
        clamps += 1;
    }
    let payload = CompressionDecision::new(pen.raw_bits_per_step, ratio, scenario.kappa_max())
        .expect("ratio validated")
        .compressed_bits;

    let mut out = PenRealization {
        used: vec![false; m],
        rate_bps: vec![0.0; m],
        energy_j: vec![0.0; m],
        latency_s: vec![0.0; m],
        cost: vec![0.0; m],
        norm_energy: vec![0.0; m],
        norm_cost: vec![0.0; m],
        norm_latency: vec![0.0; m],
        distortion,
        violations: Vec::new(),
        total_energy_j: 0.0,
        weighted_latency_s: 0.0,
        norm_latency_sum: 0.0,
        clamp_events: 0,
    };

    for j in 0..m {
        if utilization[j] <= scenario.connection_threshold {
            continue;
        }
        out.used[j] = true;
        let ran = &scenario.rans[j];
        let link = LinkState::derive(ran, &scenario.channel, fading_row[j], theta_row[j]);
        let (gain, rate) = (link.gain, link.rate_bps);
        out.rate_bps[j] = rate;
        let bits = payload * utilization[j];
        if rate <= 0.0 {
            // Unusable link: nothing transmits, latency saturates.
            out.violations.push(Violation { tag: ConstraintTag::ZeroBandwidthLink, ran: j });
            out.norm_latency[j] = 1.0;
            clamps += 1;
            out.norm_latency_sum += 1.0;
            continue;
        }
        if bits / rate > scenario.resource_share_s + CAPACITY_SLACK {
            out.violations.push(Violation { tag: ConstraintTag::CapacityExceeded, ran: j });
        }
        let energy = link_energy(ran, &scenario.channel, bits, theta_row[j], gain, rate).expect("rate checked positive");
        let latency = link_latency(ran, bits, rate).expect("rate checked positive");
        let cost = link_cost(ran, bits);
        out.energy_j[j] = energy;
        out.latency_s[j] = latency;
        out.cost[j] = cost;
        out.norm_energy[j] = normalize(energy, scenario.norm.energy_j, &mut clamps);
        out.norm_cost[j] = normalize(cost, scenario.norm.cost, &mut clamps);
        out.norm_latency[j] = normalize(latency, scenario.norm.latency_s, &mut clamps);
        out.total_energy_j += energy;
        out.weighted_latency_s += utilization[j] * latency;
        out.norm_latency_sum += out.norm_latency[j];
    }
    out.clamp_events = clamps;
    out
}

/// Reward of one PEN for one step.
///
/// A violated constraint dominates everything with a fixed -1 penalty.
/// Otherwise the normal branch trades off the utilization-weighted composite
/// utility and distortion, while the seizure branch cares only about latency
/// and distortion; the battery level is added in both.
pub fn pen_reward(profile: &PenProfile, seizure: bool, m: &PenNormMetrics, violated: bool) -> Scalar {
    if violated {
        return -1.0;
    }
    if seizure {
        let w = &profile.weights_seizure;
        let latency_sum: Scalar = m.latency.iter().sum();
        w.latency * (1.0 - latency_sum) + w.distortion * (0.1 - m.distortion) + m.battery
    } else {
        let w = &profile.weights_normal;
        let weighted_utility: Scalar = m
            .utilization
            .iter()
            .zip(m.energy.iter().zip(m.cost.iter().zip(m.latency.iter())))
            .map(|(&p, (&e, (&c, &l)))| p * (w.energy * e + w.cost * c + w.latency * l))
            .sum();
        (1.0 - weighted_utility) + w.distortion * (1.0 - m.distortion) + m.battery
    }
}

/// Reward of one RAN: the average reward of its connected PENs, -1 when its
/// allocation was infeasible, 0 when no PEN sent it anything.
pub fn ran_reward(pen_connected: &[bool], pen_rewards: &[Scalar], feasible: bool) -> Scalar {
    if !feasible {
        return -1.0;
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (connected, reward) in pen_connected.iter().zip(pen_rewards.iter()) {
        if *connected {
            sum += *reward;
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as Scalar
    }
}

/// Drains a battery, flooring at depletion. Returns the new level and the
/// level normalized by capacity.
pub fn update_battery(prev_j: Scalar, step_energy_j: Scalar, capacity_j: Scalar) -> (Scalar, Scalar) {
    debug_assert!(prev_j >= 0.0 && step_energy_j >= 0.0 && capacity_j > 0.0);
    let new = (prev_j - step_energy_j).max(0.0);
    (new, new / capacity_j)
}

/// Advances the per-PEN seizure processes by one step: active seizures tick
/// down, inactive PENs may onset with their per-step probability, drawing a
/// geometric duration with the configured mean.
pub fn advance_seizure(state: &mut WorldState, pens: &[PenProfile], mean_duration_steps: Scalar, rng: &mut ChaCha8Rng) {
    let onset_duration = rand_distr::Geometric::new(1.0 / mean_duration_steps).expect("mean >= 1 validated");
    for (i, pen) in pens.iter().enumerate() {
        if !state.pens_alive[i] {
            continue;
        }
        if state.seizure_active[i] {
            state.seizure_remaining[i] = state.seizure_remaining[i].saturating_sub(1);
            if state.seizure_remaining[i] == 0 {
                state.seizure_active[i] = false;
            }
        } else if rng.gen::<Scalar>() < pen.seizure_prob {
            state.seizure_active[i] = true;
            state.seizure_remaining[i] = 1 + onset_duration.sample(rng) as u32;
        }
    }
}

/// The environment: a scenario plus one episode's world state and RNG.
#[derive(Debug, Clone)]
pub struct MultiRatEnv {
    scenario: Scenario,
    state: WorldState,
    rng: ChaCha8Rng,
}

impl MultiRatEnv {
    pub fn new(scenario: Scenario) -> Result<Self, EnvError> {
        scenario.validate()?;
        let n = scenario.num_pens();
        let m = scenario.num_rans();
        let state = WorldState {
            step: 0,
            battery_j: scenario.pens.iter().map(|p| p.battery_capacity_j).collect(),
            seizure_active: vec![false; n],
            seizure_remaining: vec![0; n],
            fading_mag_sq: vec![vec![1.0; m]; n],
            last_bw_fractions: vec![vec![1.0 / n as Scalar; m]; n],
            last_utilization: vec![vec![1.0 / m as Scalar; m]; n],
            last_ratios: vec![scenario.kappa_init; n],
            pens_alive: vec![true; n],
            clamp_events: 0,
        };
        let rng = ChaCha8Rng::seed_from_u64(0);
        Ok(Self { scenario, state, rng })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    /// Current channel gains, N x M.
    pub fn gains(&self) -> Vec<Vec<Scalar>> {
        self.state
            .fading_mag_sq
            .iter()
            .map(|row| row.iter().map(|&f| channel_gain(&self.scenario.channel, f)).collect())
            .collect()
    }

    fn draw_fading(&mut self) {
        // |h| ~ Rayleigh(1) by inverse transform: |h|^2 = -2 ln(U), U in (0, 1].
        for row in self.state.fading_mag_sq.iter_mut() {
            for f in row.iter_mut() {
                let u: Scalar = 1.0 - self.rng.gen::<Scalar>();
                *f = -2.0 * u.ln();
            }
        }
    }

    /// Starts a fresh episode. Batteries are full, no seizures are active,
    /// fading is redrawn, and the placeholder observations assume uniform
    /// last actions so every field is well-defined at t = 0.
    pub fn reset(&mut self, seed: u64) -> (Vec<PenObservation>, Vec<RanObservation>) {
        let n = self.scenario.num_pens();
        let m = self.scenario.num_rans();
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.state = WorldState {
            step: 0,
            battery_j: self.scenario.pens.iter().map(|p| p.battery_capacity_j).collect(),
            seizure_active: vec![false; n],
            seizure_remaining: vec![0; n],
            fading_mag_sq: vec![vec![0.0; m]; n],
            last_bw_fractions: vec![vec![1.0 / n as Scalar; m]; n],
            last_utilization: vec![vec![1.0 / m as Scalar; m]; n],
            last_ratios: vec![self.scenario.kappa_init; n],
            pens_alive: vec![true; n],
            clamp_events: 0,
        };
        self.draw_fading();

        let mut pen_obs = Vec::with_capacity(n);
        for i in 0..n {
            let real = realize_pen_step(
                &self.scenario,
                i,
                &self.state.fading_mag_sq[i],
                &self.state.last_bw_fractions[i],
                &self.state.last_utilization[i],
                self.state.last_ratios[i],
            );
            self.state.clamp_events += real.clamp_events;
            pen_obs.push(PenObservation {
                norm_energy: real.norm_energy,
                norm_cost: real.norm_cost,
                norm_latency: real.norm_latency,
                norm_distortion: real.distortion,
                seizure: 0.0,
                norm_battery: 1.0,
            });
        }
        let ran_obs = (0..m)
            .map(|j| RanObservation {
                pen_connected: (0..n)
                    .map(|i| {
                        if self.state.last_utilization[i][j] > self.scenario.connection_threshold {
                            1.0
                        } else {
                            0.0
                        }
                    })
                    .collect(),
            })
            .collect();
        (pen_obs, ran_obs)
    }

    fn validate_actions(&self, pen_actions: &[PenAction], ran_actions: &[RanAction]) -> Result<(), EnvError> {
        let n = self.scenario.num_pens();
        let m = self.scenario.num_rans();
        if pen_actions.len() != n {
            return Err(EnvError::ActionCount { kind: "pen", want: n, got: pen_actions.len() });
        }
        if ran_actions.len() != m {
            return Err(EnvError::ActionCount { kind: "ran", want: m, got: ran_actions.len() });
        }
        for (i, a) in pen_actions.iter().enumerate() {
            if a.utilization.len() != m {
                return Err(EnvError::ActionWidth { kind: "pen", index: i, want: m, got: a.utilization.len() });
            }
            let sum: Scalar = a.utilization.iter().sum();
            if (sum - 1.0).abs() > SIMPLEX_TOL || a.utilization.iter().any(|&p| p < -SIMPLEX_TOL) {
                return Err(EnvError::NotSimplex { kind: "pen", index: i, sum });
            }
            let max = self.scenario.kappa_max();
            if !(0.0..=max).contains(&a.ratio) {
                return Err(EnvError::RatioOutOfRange { index: i, ratio: a.ratio, max });
            }
        }
        for (j, a) in ran_actions.iter().enumerate() {
            if a.bw_fractions.len() != n {
                return Err(EnvError::ActionWidth { kind: "ran", index: j, want: n, got: a.bw_fractions.len() });
            }
            let sum: Scalar = a.bw_fractions.iter().sum();
            if (sum - 1.0).abs() > SIMPLEX_TOL || a.bw_fractions.iter().any(|&p| p < -SIMPLEX_TOL) {
                return Err(EnvError::NotSimplex { kind: "ran", index: j, sum });
            }
        }
        Ok(())
    }

    /// Applies one joint action. Constraint violations are not errors: they
    /// produce the -1 penalty and a violation tag.
    pub fn step(&mut self, pen_actions: &[PenAction], ran_actions: &[RanAction]) -> Result<StepResult, EnvError> {
        self.validate_actions(pen_actions, ran_actions)?;
        let n = self.scenario.num_pens();
        let m = self.scenario.num_rans();

        let mut pen_rewards = vec![0.0; n];
        let mut violations: Vec<Vec<Violation>> = vec![Vec::new(); n];
        let mut records = vec![PenStepRecord::inactive(); n];
        let mut connected = vec![vec![false; m]; n];
        let mut ran_feasible = vec![true; m];
        let mut norms: Vec<Option<PenNormMetrics>> = vec![None; n];
        let acted: Vec<bool> = self.state.pens_alive.clone();

        for i in 0..n {
            if !acted[i] {
                continue;
            }
            let theta_row: Vec<Scalar> = (0..m).map(|j| ran_actions[j].bw_fractions[i]).collect();
            let real = realize_pen_step(
                &self.scenario,
                i,
                &self.state.fading_mag_sq[i],
                &theta_row,
                &pen_actions[i].utilization,
                pen_actions[i].ratio,
            );
            self.state.clamp_events += real.clamp_events;
            connected[i].copy_from_slice(&real.used);
            for v in &real.violations {
                ran_feasible[v.ran] = false;
            }

            let capacity = self.scenario.pens[i].battery_capacity_j;
            let (new_level, norm_battery) = update_battery(self.state.battery_j[i], real.total_energy_j, capacity);
            self.state.battery_j[i] = new_level;

            let metrics = PenNormMetrics {
                utilization: pen_actions[i].utilization.clone(),
                energy: real.norm_energy.clone(),
                cost: real.norm_cost.clone(),
                latency: real.norm_latency.clone(),
                distortion: real.distortion,
                battery: norm_battery,
            };
            let violated = !real.violations.is_empty();
            pen_rewards[i] = pen_reward(&self.scenario.pens[i], self.state.seizure_active[i], &metrics, violated);
            records[i] = PenStepRecord {
                acted: true,
                energy_j: real.total_energy_j,
                latency_s: real.weighted_latency_s,
                cost: real.cost.iter().sum(),
                distortion: real.distortion,
                ratio: pen_actions[i].ratio,
                seizure: self.state.seizure_active[i],
                norm_latency_sum: real.norm_latency_sum,
            };
            violations[i] = real.violations;
            norms[i] = Some(metrics);

            self.state.last_utilization[i] = pen_actions[i].utilization.clone();
            self.state.last_ratios[i] = pen_actions[i].ratio;
        }
        for (i, row) in self.state.last_bw_fractions.iter_mut().enumerate() {
            for (cell, action) in row.iter_mut().zip(ran_actions.iter()) {
                *cell = action.bw_fractions[i];
            }
        }

        let ran_rewards: Vec<Scalar> = (0..m)
            .map(|j| {
                let column: Vec<bool> = (0..n).map(|i| connected[i][j]).collect();
                ran_reward(&column, &pen_rewards, ran_feasible[j])
            })
            .collect();

        for i in 0..n {
            if self.state.battery_j[i] <= 0.0 {
                self.state.pens_alive[i] = false;
            }
        }
        let done = self.state.pens_alive.iter().all(|alive| !alive);

        advance_seizure(&mut self.state, &self.scenario.pens, self.scenario.seizure_mean_steps, &mut self.rng);
        self.draw_fading();
        self.state.step += 1;

        let pen_obs: Vec<PenObservation> = (0..n)
            .map(|i| {
                if !self.state.pens_alive[i] {
                    return PenObservation::zeros(m);
                }
                let metric = norms[i].as_ref().expect("alive pen acted");
                PenObservation {
                    norm_energy: metric.energy.clone(),
                    norm_cost: metric.cost.clone(),
                    norm_latency: metric.latency.clone(),
                    norm_distortion: metric.distortion,
                    seizure: if self.state.seizure_active[i] { 1.0 } else { 0.0 },
                    norm_battery: metric.battery,
                }
            })
            .collect();
        let ran_obs: Vec<RanObservation> = (0..m)
            .map(|j| RanObservation {
                pen_connected: (0..n)
                    .map(|i| if self.state.pens_alive[i] && connected[i][j] { 1.0 } else { 0.0 })
                    .collect(),
            })
            .collect();

        Ok(StepResult { pen_obs, ran_obs, pen_rewards, ran_rewards, done, violations, records })
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::compression::default_coefficients;
    use approx::assert_relative_eq;

    pub(crate) fn test_scenario(n: usize, m: usize) -> Scenario {
        let pens = (0..n)
            .map(|id| PenProfile {
                id,
                raw_bits_per_step: 1e6,
                battery_capacity_j: 1.0,
                seizure_prob: 0.1,
                weights_normal: MetricWeights { energy: 0.25, cost: 0.25, latency: 0.25, distortion: 0.25 },
                weights_seizure: SeizureWeights { latency: 0.5, distortion: 0.5 },
            })
            .collect();
        let rans = (0..m)
            .map(|id| RanProfile {
                id,
                total_bandwidth_hz: 10e6,
                cost_per_bit: if id == 0 { 3e-6 } else { 0.3e-6 },
                access_delay_s: 0.005 * (id + 1) as f64,
                energy_scale: 1.0,
                energy_offset_j: 1e-5,
                nominal_rate_cap_bps: None,
            })
            .collect();
        Scenario {
            pens,
            rans,
            channel: ChannelParams::new(0.1, 3.981e-21, 1e-11, 1e-3).unwrap(),
            distortion: DistortionModel::new(default_coefficients(), 4.0, 0.99).unwrap(),
            norm: NormConstants { energy_j: 5e-3, cost: 3.0, latency_s: 0.1 },
            resource_share_s: 0.04,
            step_duration_s: 10.0,
            seizure_mean_steps: 8.0,
            connection_threshold: 1e-3,
            kappa_init: 0.5,
        }
    }

    fn uniform_actions(n: usize, m: usize, ratio: Scalar) -> (Vec<PenAction>, Vec<RanAction>) {
        let pen = (0..n)
            .map(|_| PenAction { utilization: vec![1.0 / m as Scalar; m], ratio })
            .collect();
        let ran = (0..m)
            .map(|_| RanAction { bw_fractions: vec![1.0 / n as Scalar; n] })
            .collect();
        (pen, ran)
    }

    #[test]
    fn reset_gives_full_batteries_and_valid_widths() {
        let mut env = MultiRatEnv::new(test_scenario(3, 2)).unwrap();
        let (pen_obs, ran_obs) = env.reset(42);
        assert_eq!(pen_obs.len(), 3);
        assert_eq!(ran_obs.len(), 2);
        for o in &pen_obs {
            assert_eq!(o.to_vec().len(), PenObservation::width(2));
            assert_eq!(o.norm_battery, 1.0);
            assert!(o.to_vec().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        for o in &ran_obs {
            assert_eq!(o.pen_connected.len(), 3);
            assert!(o.pen_connected.iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn reset_is_deterministic_per_seed() {
        let mut a = MultiRatEnv::new(test_scenario(2, 2)).unwrap();
        let mut b = MultiRatEnv::new(test_scenario(2, 2)).unwrap();
        assert_eq!(a.reset(7), b.reset(7));
        assert_eq!(a.state(), b.state());
    }

    #[test]
    fn distinct_seeds_give_distinct_fading() {
        let mut env = MultiRatEnv::new(test_scenario(2, 2)).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..100 {
            env.reset(seed);
            let key = format!("{:?}", env.state().fading_mag_sq);
            seen.insert(key);
        }
        assert_eq!(seen.len(), 100);
    }

    #[test]
    fn step_trajectories_are_reproducible() {
        let scenario = test_scenario(2, 2);
        let run = |seed: u64| {
            let mut env = MultiRatEnv::new(scenario.clone()).unwrap();
            env.reset(seed);
            let mut out = Vec::new();
            for k in 0..20 {
                let ratio = 0.1 + 0.04 * (k as Scalar % 10.0);
                let (pa, ra) = uniform_actions(2, 2, ratio);
                out.push(env.step(&pa, &ra).unwrap());
            }
            out
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }

    #[test]
    fn zero_bandwidth_link_yields_penalty_and_tag() {
        let scenario = test_scenario(2, 2);
        let mut env = MultiRatEnv::new(scenario).unwrap();
        env.reset(1);
        let pens = vec![
            PenAction { utilization: vec![0.5, 0.5], ratio: 0.5 },
            PenAction { utilization: vec![1.0, 0.0], ratio: 0.5 },
        ];
        // RAN 1 grants everything to PEN 1, so PEN 0 sends on a dead link.
        let rans = vec![
            RanAction { bw_fractions: vec![0.5, 0.5] },
            RanAction { bw_fractions: vec![0.0, 1.0] },
        ];
        let result = env.step(&pens, &rans).unwrap();
        assert_eq!(result.pen_rewards[0], -1.0);
        assert_eq!(result.violations[0], vec![Violation { tag: ConstraintTag::ZeroBandwidthLink, ran: 1 }]);
        assert_eq!(result.ran_rewards[1], -1.0, "infeasible allocation penalizes the RAN");
        assert!(result.violations[1].is_empty());
    }

    #[test]
    fn violation_iff_penalty_reward() {
        let scenario = test_scenario(2, 2);
        let mut env = MultiRatEnv::new(scenario).unwrap();
        env.reset(11);
        let mut saw_violation = false;
        let mut saw_clean = false;
        for k in 0..200 {
            // Sweep ratios including low ones that overload slow links.
            let ratio = (k as Scalar % 20.0) / 20.0 * 0.9;
            let (pa, ra) = uniform_actions(2, 2, ratio);
            let result = env.step(&pa, &ra).unwrap();
            for i in 0..2 {
                if !result.records[i].acted {
                    continue;
                }
                if result.violations[i].is_empty() {
                    saw_clean = true;
                    assert!(result.pen_rewards[i] > -1.0);
                } else {
                    saw_violation = true;
                    assert_eq!(result.pen_rewards[i], -1.0);
                }
            }
            if result.done {
                break;
            }
        }
        assert!(saw_violation && saw_clean, "sweep should exercise both branches");
    }

    #[test]
    fn reward_arithmetic_normal_branch() {
        let profile = test_scenario(1, 2).pens[0].clone();
        // Sum P*U = 0.3 via a single link with utility 0.3 and P = 1.
        let metrics = PenNormMetrics {
            utilization: vec![1.0, 0.0],
            energy: vec![0.4, 0.0],
            cost: vec![0.4, 0.0],
            latency: vec![0.4, 0.0],
            distortion: 0.2,
            battery: 0.8,
        };
        let r = pen_reward(&profile, false, &metrics, false);
        assert_relative_eq!(r, (1.0 - 0.3) + 0.25 * (1.0 - 0.2) + 0.8, max_relative = 1e-12);
    }

    #[test]
    fn reward_arithmetic_seizure_branch() {
        let profile = test_scenario(1, 2).pens[0].clone();
        let metrics = PenNormMetrics {
            utilization: vec![1.0, 0.0],
            energy: vec![0.0, 0.0],
            cost: vec![0.0, 0.0],
            latency: vec![0.1, 0.0],
            distortion: 0.05,
            battery: 0.5,
        };
        let r = pen_reward(&profile, true, &metrics, false);
        assert_relative_eq!(r, 0.5 * (1.0 - 0.1) + 0.5 * (0.1 - 0.05) + 0.5, max_relative = 1e-12);
    }

    #[test]
    fn reward_penalty_dominates() {
        let profile = test_scenario(1, 1).pens[0].clone();
        let metrics = PenNormMetrics {
            utilization: vec![1.0],
            energy: vec![0.0],
            cost: vec![0.0],
            latency: vec![0.0],
            distortion: 0.0,
            battery: 1.0,
        };
        assert_eq!(pen_reward(&profile, false, &metrics, true), -1.0);
        assert_eq!(pen_reward(&profile, true, &metrics, true), -1.0);
    }

    #[test]
    fn ran_reward_cases() {
        assert_relative_eq!(ran_reward(&[true, true], &[1.0, 0.5], true), 0.75, max_relative = 1e-12);
        assert_eq!(ran_reward(&[true, true], &[1.0, 0.5], false), -1.0);
        assert_eq!(ran_reward(&[false, false], &[1.0, 0.5], true), 0.0);
    }

    #[test]
    fn battery_update_cases() {
        assert_eq!(update_battery(100.0, 5.0, 100.0), (95.0, 0.95));
        assert_eq!(update_battery(1.0, 5.0, 100.0), (0.0, 0.0));
        assert_eq!(update_battery(42.0, 0.0, 100.0), (42.0, 0.42));
    }

    #[test]
    fn seizure_never_with_zero_probability() {
        let mut scenario = test_scenario(1, 1);
        scenario.pens[0].seizure_prob = 0.0;
        let mut env = MultiRatEnv::new(scenario).unwrap();
        env.reset(5);
        for _ in 0..200 {
            let (pa, ra) = uniform_actions(1, 1, 0.5);
            env.step(&pa, &ra).unwrap();
            assert!(!env.state().seizure_active[0]);
        }
    }

    #[test]
    fn seizure_always_with_unit_probability() {
        let mut scenario = test_scenario(1, 1);
        scenario.pens[0].seizure_prob = 1.0;
        let mut env = MultiRatEnv::new(scenario).unwrap();
        env.reset(5);
        let (pa, ra) = uniform_actions(1, 1, 0.5);
        env.step(&pa, &ra).unwrap();
        assert!(env.state().seizure_active[0]);
    }

    #[test]
    fn seizure_onset_frequency_matches_probability() {
        let scenario = test_scenario(1, 1);
        let mut state = WorldState {
            step: 0,
            battery_j: vec![1.0],
            seizure_active: vec![false],
            seizure_remaining: vec![0],
            fading_mag_sq: vec![vec![1.0]],
            last_bw_fractions: vec![vec![1.0]],
            last_utilization: vec![vec![1.0]],
            last_ratios: vec![0.5],
            pens_alive: vec![true],
            clamp_events: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut eligible = 0u64;
        let mut onsets = 0u64;
        for _ in 0..10_000 {
            let was_active = state.seizure_active[0];
            if !was_active {
                eligible += 1;
            }
            advance_seizure(&mut state, &scenario.pens, scenario.seizure_mean_steps, &mut rng);
            if !was_active && state.seizure_active[0] {
                onsets += 1;
            }
        }
        let freq = onsets as f64 / eligible as f64;
        assert!((freq - 0.1).abs() < 0.01, "onset frequency {freq}");
    }

    #[test]
    fn batteries_nonincreasing_and_done_on_depletion() {
        let mut scenario = test_scenario(2, 2);
        for pen in scenario.pens.iter_mut() {
            pen.battery_capacity_j = 2e-3; // dies within a few steps
        }
        let mut env = MultiRatEnv::new(scenario).unwrap();
        env.reset(3);
        let mut prev = env.state().battery_j.clone();
        let mut done = false;
        for _ in 0..200 {
            let (pa, ra) = uniform_actions(2, 2, 0.2);
            let result = env.step(&pa, &ra).unwrap();
            for (now, before) in env.state().battery_j.iter().zip(prev.iter()) {
                assert!(now <= before);
            }
            prev = env.state().battery_j.clone();
            if result.done {
                done = true;
                assert!(env.state().battery_j.iter().all(|&b| b == 0.0));
                break;
            }
        }
        assert!(done, "batteries sized to deplete");
    }

    #[test]
    fn dead_pens_observe_zeros_and_earn_nothing() {
        let mut scenario = test_scenario(2, 2);
        scenario.pens[0].battery_capacity_j = 1e-6; // dies on first step
        let mut env = MultiRatEnv::new(scenario).unwrap();
        env.reset(9);
        let (pa, ra) = uniform_actions(2, 2, 0.5);
        let first = env.step(&pa, &ra).unwrap();
        assert!(!env.state().pens_alive[0]);
        assert_eq!(first.pen_obs[0], PenObservation::zeros(2));
        let second = env.step(&pa, &ra).unwrap();
        assert_eq!(second.pen_rewards[0], 0.0);
        assert!(!second.records[0].acted);
        for o in &second.ran_obs {
            assert_eq!(o.pen_connected[0], 0.0);
        }
    }

    #[test]
    fn malformed_shapes_are_hard_errors() {
        let mut env = MultiRatEnv::new(test_scenario(2, 2)).unwrap();
        env.reset(0);
        let (pa, ra) = uniform_actions(2, 2, 0.5);
        assert!(matches!(env.step(&pa[..1], &ra), Err(EnvError::ActionCount { .. })));
        let mut bad = pa.clone();
        bad[0].utilization = vec![0.7, 0.2]; // sums to 0.9
        assert!(matches!(env.step(&bad, &ra), Err(EnvError::NotSimplex { .. })));
        let mut bad_ratio = pa.clone();
        bad_ratio[1].ratio = 0.995;
        assert!(matches!(env.step(&bad_ratio, &ra), Err(EnvError::RatioOutOfRange { .. })));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn battery_update_bounds(prev in 0.0f64..10.0, energy in 0.0f64..10.0, cap in 0.1f64..10.0) {
                let prev = prev.min(cap);
                let (new, norm) = update_battery(prev, energy, cap);
                prop_assert!(new >= 0.0 && new <= prev);
                prop_assert!((0.0..=1.0).contains(&norm));
                prop_assert!((norm - new / cap).abs() < 1e-15);
            }

            #[test]
            fn pen_reward_is_bounded(
                util in 0.0f64..1.0,
                e in 0.0f64..1.0, c in 0.0f64..1.0, l in 0.0f64..1.0,
                d in 0.0f64..1.0, batt in 0.0f64..1.0,
                seizure in proptest::bool::ANY,
            ) {
                let profile = test_scenario(1, 1).pens[0].clone();
                let m = PenNormMetrics {
                    utilization: vec![util],
                    energy: vec![e],
                    cost: vec![c],
                    latency: vec![l],
                    distortion: d,
                    battery: batt,
                };
                let r = pen_reward(&profile, seizure, &m, false);
                // Violation-free rewards stay strictly above the penalty and
                // below the sum of the three unit-scale terms.
                prop_assert!(r > -1.0 && r <= 3.0);
                prop_assert_eq!(pen_reward(&profile, seizure, &m, true), -1.0);
            }
        }
    }

    #[test]
    fn single_link_reward_matches_composed_oracle() {
        // N = 1, M = 1, everything deterministic except fading, which we read
        // from the state and feed to an independent composition of the model
        // equations.
        let scenario = test_scenario(1, 1);
        let mut env = MultiRatEnv::new(scenario.clone()).unwrap();
        env.reset(21);
        let fading = env.state().fading_mag_sq[0][0];
        let ratio = 0.5;
        let pa = vec![PenAction { utilization: vec![1.0], ratio }];
        let ra = vec![RanAction { bw_fractions: vec![1.0] }];
        let result = env.step(&pa, &ra).unwrap();

        // Oracle: recompute every quantity from scratch.
        let ran = &scenario.rans[0];
        let ch = &scenario.channel;
        let k = -1.5 / (5.0 * ch.ber).ln();
        let gain = k * ch.path_loss * fading;
        let w = ran.total_bandwidth_hz;
        let rate = w * (1.0 + ch.tx_power_w * gain / (ch.noise_density_w_per_hz * w)).log2();
        let bits = 1e6 * (1.0 - ratio);
        let energy = ran.energy_scale * (bits * ch.noise_density_w_per_hz * w / (rate * gain)) * ((rate / w).exp2() - 1.0)
            + ran.energy_offset_j;
        let latency = bits / rate + ran.access_delay_s;
        let cost = bits * ran.cost_per_bit;
        let distortion = scenario.distortion.distortion(ratio).unwrap();
        assert!(bits / rate <= scenario.resource_share_s, "oracle case must be feasible");
        let battery = (1.0 - energy).max(0.0) / 1.0;
        let e_bar = (energy / scenario.norm.energy_j).min(1.0);
        let c_bar = (cost / scenario.norm.cost).min(1.0);
        let l_bar = (latency / scenario.norm.latency_s).min(1.0);
        let utility = 0.25 * e_bar + 0.25 * c_bar + 0.25 * l_bar;
        let expected = (1.0 - utility) + 0.25 * (1.0 - distortion) + battery;
        assert_relative_eq!(result.pen_rewards[0], expected, max_relative = 1e-12);
        assert_relative_eq!(result.ran_rewards[0], expected, max_relative = 1e-12);
    }
}
