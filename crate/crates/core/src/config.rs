//! Experiment configuration: a sectioned TOML file with explicit units in
//! key names, validated against every module-level invariant at parse time.
//!
//! The file-facing structs keep the file's units; [`ExperimentConfig::build`]
//! converts to SI (dBm to W/Hz, Mbit to bits, ms to s) and re-validates. The
//! config hash is the SHA-256 of the canonical serialization, so formatting
//! and comments do not affect identity.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::baselines::{BaselineParams, GridSpec};
use crate::env::{MetricWeights, NormConstants, PenProfile, Scenario, SeizureWeights};
use crate::marl::TrainConfig;
use crate::{ChannelParams, DistortionModel, RanProfile, Scalar};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{key}: {constraint}")]
    Invariant { key: String, constraint: String },
}

fn ensure(cond: bool, key: &str, constraint: &str) -> Result<(), ConfigError> {
    if cond {
        Ok(())
    } else {
        Err(ConfigError::Invariant { key: key.to_string(), constraint: constraint.to_string() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub baselines: BaselineSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub step_duration_s: Scalar,
    pub resource_share_ms: Scalar,
    pub seizure_duration_mean_steps: Scalar,
    pub connection_threshold: Scalar,
    pub kappa_max: Scalar,
    pub kappa_init: Scalar,
    pub channel: ChannelSection,
    pub normalization: NormalizationSection,
    pub distortion: DistortionSection,
    pub rans: Vec<RanSection>,
    pub pens: Vec<PenSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub tx_power_w: Scalar,
    pub noise_density_dbm_per_hz: Scalar,
    pub path_loss: Scalar,
    pub ber: Scalar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizationSection {
    pub energy_j: Scalar,
    pub cost: Scalar,
    pub latency_s: Scalar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistortionSection {
    pub c1: Scalar,
    pub c2: Scalar,
    pub c3: Scalar,
    pub c4: Scalar,
    pub c5: Scalar,
    pub c6: Scalar,
    pub filter_length: Scalar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RanSection {
    pub name: String,
    pub bandwidth_hz: Scalar,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_cap_mbps: Option<Scalar>,
    pub cost_per_mbit: Scalar,
    pub access_delay_ms: Scalar,
    pub energy_scale: Scalar,
    pub energy_offset_j: Scalar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenSection {
    pub raw_data_mbit: Scalar,
    pub battery_capacity_j: Scalar,
    pub seizure_prob: Scalar,
    /// (energy, cost, latency, distortion); must sum to 1.
    pub weights_normal: [Scalar; 4],
    /// (latency, distortion) used while a seizure is active.
    pub weights_seizure: [Scalar; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub gamma: Scalar,
    pub train_interval_steps: usize,
    pub updates_per_train: usize,
    pub soft_epsilon: Scalar,
    pub warmup_episodes: usize,
    pub noise_scale_start: Scalar,
    pub noise_scale_end: Scalar,
    pub noise_decay_episodes: usize,
    pub actor_lr: Scalar,
    pub critic_lr: Scalar,
    pub grad_clip_norm: Scalar,
    pub hidden_sizes: Vec<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub episodes: usize,
    pub max_steps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    pub utilization_resolution: usize,
    pub ratio_resolution: usize,
    pub onsra_max_rounds: usize,
    pub onsra_tol: Scalar,
    pub recompute_interval_steps: usize,
}

/// Evaluation parameters in runtime form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalParams {
    pub episodes: usize,
    pub max_steps: usize,
    pub seed: u64,
}

/// A fully validated experiment in SI units.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub scenario: Scenario,
    pub train: TrainConfig,
    pub eval: EvalParams,
    pub baselines: BaselineParams,
    pub config_hash: [u8; 32],
}

pub fn dbm_to_watts(dbm: Scalar) -> Scalar {
    10f64.powf((dbm - 30.0) / 10.0)
}

impl ExperimentConfig {
    /// Parses the documented TOML form; unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// Canonical serialization (comment- and formatting-free).
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> [u8; 32] {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.into()
    }

    /// Converts to SI units and re-validates every invariant, naming the
    /// offending key on failure.
    pub fn build(&self) -> Result<Experiment, ConfigError> {
        let s = &self.scenario;
        ensure(!s.rans.is_empty(), "scenario.rans", "at least one RAN required")?;
        ensure(!s.pens.is_empty(), "scenario.pens", "at least one PEN required")?;
        ensure(s.kappa_max > 0.0 && s.kappa_max < 1.0, "scenario.kappa_max", "must lie in (0, 1)")?;
        ensure(
            (0.0..=s.kappa_max).contains(&s.kappa_init),
            "scenario.kappa_init",
            "must lie in [0, kappa_max]",
        )?;
        ensure(s.seizure_duration_mean_steps >= 1.0, "scenario.seizure_duration_mean_steps", "must be >= 1")?;

        let channel = ChannelParams::new(
            s.channel.tx_power_w,
            dbm_to_watts(s.channel.noise_density_dbm_per_hz),
            s.channel.path_loss,
            s.channel.ber,
        )
        .map_err(|e| ConfigError::Invariant { key: "scenario.channel".into(), constraint: e.to_string() })?;

        let distortion = DistortionModel::new(
            [s.distortion.c1, s.distortion.c2, s.distortion.c3, s.distortion.c4, s.distortion.c5, s.distortion.c6],
            s.distortion.filter_length,
            s.kappa_max,
        )
        .map_err(|e| ConfigError::Invariant { key: "scenario.distortion".into(), constraint: e.to_string() })?;

        let rans: Vec<RanProfile> = s
            .rans
            .iter()
            .enumerate()
            .map(|(id, r)| {
                let profile = RanProfile {
                    id,
                    total_bandwidth_hz: r.bandwidth_hz,
                    cost_per_bit: r.cost_per_mbit / 1e6,
                    access_delay_s: r.access_delay_ms / 1e3,
                    energy_scale: r.energy_scale,
                    energy_offset_j: r.energy_offset_j,
                    nominal_rate_cap_bps: r.rate_cap_mbps.map(|c| c * 1e6),
                };
                profile.validate().map_err(|e| ConfigError::Invariant {
                    key: format!("scenario.rans[{id}]"),
                    constraint: e.to_string(),
                })?;
                Ok(profile)
            })
            .collect::<Result<_, ConfigError>>()?;

        let pens: Vec<PenProfile> = s
            .pens
            .iter()
            .enumerate()
            .map(|(id, p)| {
                let [energy, cost, latency, distortion_w] = p.weights_normal;
                let profile = PenProfile {
                    id,
                    raw_bits_per_step: p.raw_data_mbit * 1e6,
                    battery_capacity_j: p.battery_capacity_j,
                    seizure_prob: p.seizure_prob,
                    weights_normal: MetricWeights { energy, cost, latency, distortion: distortion_w },
                    weights_seizure: SeizureWeights { latency: p.weights_seizure[0], distortion: p.weights_seizure[1] },
                };
                profile.validate().map_err(|e| ConfigError::Invariant {
                    key: format!("scenario.pens[{id}]"),
                    constraint: e.to_string(),
                })?;
                Ok(profile)
            })
            .collect::<Result<_, ConfigError>>()?;

        let scenario = Scenario {
            pens,
            rans,
            channel,
            distortion,
            norm: NormConstants {
                energy_j: s.normalization.energy_j,
                cost: s.normalization.cost,
                latency_s: s.normalization.latency_s,
            },
            resource_share_s: s.resource_share_ms / 1e3,
            step_duration_s: s.step_duration_s,
            seizure_mean_steps: s.seizure_duration_mean_steps,
            connection_threshold: s.connection_threshold,
            kappa_init: s.kappa_init,
        };
        scenario
            .validate()
            .map_err(|e| ConfigError::Invariant { key: "scenario".into(), constraint: e.to_string() })?;

        let t = &self.train;
        ensure(t.gamma < 1.0 && t.gamma >= 0.0, "train.gamma", "discount factor must be < 1")?;
        ensure(t.batch_size > 0 && t.batch_size <= t.replay_capacity, "train.batch_size", "must be positive and <= replay_capacity")?;
        ensure(t.episodes > 0, "train.episodes", "must be positive")?;
        ensure(t.steps_per_episode > 0, "train.steps_per_episode", "must be positive")?;
        ensure(t.train_interval_steps > 0, "train.train_interval_steps", "must be positive")?;
        ensure(t.updates_per_train > 0, "train.updates_per_train", "must be positive")?;
        ensure((0.0..=1.0).contains(&t.soft_epsilon), "train.soft_epsilon", "must lie in [0, 1]")?;
        ensure(t.actor_lr > 0.0 && t.critic_lr > 0.0, "train.actor_lr", "learning rates must be positive")?;
        ensure(t.grad_clip_norm > 0.0, "train.grad_clip_norm", "must be positive")?;
        ensure(!t.hidden_sizes.is_empty(), "train.hidden_sizes", "at least one hidden layer")?;
        ensure(t.hidden_sizes.iter().all(|&h| h > 0), "train.hidden_sizes", "sizes must be positive")?;
        let train = TrainConfig {
            episodes: t.episodes,
            steps_per_episode: t.steps_per_episode,
            batch_size: t.batch_size,
            replay_capacity: t.replay_capacity,
            gamma: t.gamma,
            train_interval_steps: t.train_interval_steps,
            updates_per_train: t.updates_per_train,
            soft_epsilon: t.soft_epsilon,
            warmup_episodes: t.warmup_episodes,
            noise_scale_start: t.noise_scale_start,
            noise_scale_end: t.noise_scale_end,
            noise_decay_episodes: t.noise_decay_episodes,
            actor_lr: t.actor_lr,
            critic_lr: t.critic_lr,
            grad_clip_norm: t.grad_clip_norm,
            hidden_sizes: t.hidden_sizes.clone(),
            seed: t.seed,
        };

        ensure(self.eval.episodes > 0, "eval.episodes", "must be positive")?;
        ensure(self.eval.max_steps > 0, "eval.max_steps", "must be positive")?;
        let eval = EvalParams { episodes: self.eval.episodes, max_steps: self.eval.max_steps, seed: self.eval.seed };

        let b = &self.baselines;
        let grid = GridSpec { utilization_resolution: b.utilization_resolution, ratio_resolution: b.ratio_resolution };
        grid.validate()
            .map_err(|e| ConfigError::Invariant { key: "baselines".into(), constraint: e.to_string() })?;
        ensure(b.onsra_max_rounds >= 1, "baselines.onsra_max_rounds", "must be >= 1")?;
        ensure(b.onsra_tol >= 0.0, "baselines.onsra_tol", "must be >= 0")?;
        let baselines = BaselineParams {
            grid,
            onsra_max_rounds: b.onsra_max_rounds,
            onsra_tol: b.onsra_tol,
            recompute_interval_steps: b.recompute_interval_steps,
        };

        Ok(Experiment { scenario, train, eval, baselines, config_hash: self.hash() })
    }
}

/// Parses and builds in one step.
pub fn parse_config(text: &str) -> Result<(ExperimentConfig, Experiment), ConfigError> {
    let raw = ExperimentConfig::parse(text)?;
    let experiment = raw.build()?;
    Ok((raw, experiment))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn default_text() -> String {
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/default.toml")).unwrap()
    }

    #[test]
    fn shipped_default_matches_table_values() {
        let (_, experiment) = parse_config(&default_text()).unwrap();
        assert_eq!(experiment.scenario.num_pens(), 5);
        assert_eq!(experiment.scenario.num_rans(), 3);
        assert_eq!(experiment.train.gamma, 0.95);
        assert_eq!(experiment.train.batch_size, 128);
        assert_eq!(experiment.train.replay_capacity, 10_000);
        assert_eq!(experiment.train.steps_per_episode, 200);
        assert_eq!(experiment.train.actor_lr, 1e-4);
        assert_eq!(experiment.train.critic_lr, 3e-4);
        // Unit conversions: -174 dBm/Hz, 40/25/15 Mbps caps, Euro/Mbit costs.
        assert_relative_eq!(experiment.scenario.channel.noise_density_w_per_hz, 3.981e-21, max_relative = 1e-3);
        assert_eq!(experiment.scenario.rans[0].nominal_rate_cap_bps, Some(40e6));
        assert_relative_eq!(experiment.scenario.rans[0].cost_per_bit, 6e-6, max_relative = 1e-12);
        assert_relative_eq!(experiment.scenario.rans[2].cost_per_bit, 0.1e-6, max_relative = 1e-12);
        assert_relative_eq!(experiment.scenario.resource_share_s, 0.02, max_relative = 1e-12);
        assert_eq!(experiment.scenario.pens[0].raw_bits_per_step, 1e6);
        assert_eq!(experiment.scenario.pens[0].seizure_prob, 0.1);
        assert_eq!(experiment.scenario.channel.path_loss, 3.6e-6);
    }

    #[test]
    fn gamma_above_one_is_rejected_by_name() {
        let text = default_text().replace("gamma = 0.95", "gamma = 1.5");
        let err = parse_config(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("train.gamma") && msg.contains("discount factor must be < 1"), "{msg}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = default_text() + "\n[bogus]\nx = 1\n";
        assert!(matches!(ExperimentConfig::parse(&text), Err(ConfigError::Parse(_))));
        let text = default_text().replace("gamma = 0.95", "gamma = 0.95\nnot_a_key = 3");
        assert!(ExperimentConfig::parse(&text).is_err());
    }

    #[test]
    fn canonical_round_trip_is_identity() {
        let raw = ExperimentConfig::parse(&default_text()).unwrap();
        let canonical = raw.canonical();
        let reparsed = ExperimentConfig::parse(&canonical).unwrap();
        assert_eq!(raw, reparsed);
        assert_eq!(raw.hash(), reparsed.hash());
        // Comments and formatting do not change the hash.
        let commented = format!("# a comment\n{}", default_text());
        assert_eq!(ExperimentConfig::parse(&commented).unwrap().hash(), raw.hash());
    }

    #[test]
    fn dbm_conversion() {
        assert_relative_eq!(dbm_to_watts(-174.0), 3.98107170553497e-21, max_relative = 1e-12);
        assert_relative_eq!(dbm_to_watts(30.0), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn bad_weights_name_the_pen() {
        let text = default_text().replace("weights_normal = [0.25, 0.25, 0.25, 0.25]", "weights_normal = [0.5, 0.25, 0.25, 0.25]");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("scenario.pens[0]"), "{err}");
    }

    #[test]
    fn desk_and_smoke_configs_build() {
        for name in ["desk.toml", "smoke.toml"] {
            let path = format!("{}/../../configs/{name}", env!("CARGO_MANIFEST_DIR"));
            let text = std::fs::read_to_string(&path).unwrap();
            let (_, experiment) = parse_config(&text).unwrap();
            assert_eq!(experiment.scenario.num_pens(), 2, "{name}");
            assert_eq!(experiment.scenario.num_rans(), 2, "{name}");
        }
    }
}
