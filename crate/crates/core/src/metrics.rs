//! Episode metric collection and the CSV schemas emitted by the harness.
//!
//! Learned-policy evaluation and baseline runs share [`MetricsAccumulator`],
//! so every policy reports the identical [`EpisodeMetrics`] schema.

use std::fmt::Write as _;

use crate::env::StepResult;
use crate::Scalar;

/// Per-episode metrics: the comparison axes plus seizure-window sub-means.
///
/// All means are taken over steps in which the PEN was alive; seizure
/// sub-means are `None` when the episode had no step of that kind.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeMetrics {
    pub episode: usize,
    /// Cumulative (undiscounted) reward per PEN agent.
    pub pen_rewards: Vec<Scalar>,
    /// Cumulative reward per RAN agent.
    pub ran_rewards: Vec<Scalar>,
    /// Steps each PEN survived (capped at the episode horizon).
    pub lifetime_steps: Vec<u64>,
    /// Lifetime converted through the configured step duration.
    pub lifetime_hours: Vec<Scalar>,
    pub mean_energy_j: Scalar,
    pub mean_latency_s: Scalar,
    pub mean_cost: Scalar,
    pub mean_distortion: Scalar,
    pub seizure_mean_latency_s: Option<Scalar>,
    pub seizure_mean_distortion: Option<Scalar>,
    pub seizure_mean_ratio: Option<Scalar>,
    pub normal_mean_ratio: Option<Scalar>,
    /// Mean of the summed normalized per-link latencies during seizures.
    pub seizure_mean_norm_latency: Option<Scalar>,
    pub normal_mean_norm_latency: Option<Scalar>,
    pub violation_count: u64,
    pub clamp_events: u64,
}

impl EpisodeMetrics {
    /// The six comparison axes, aggregated over agents.
    pub fn axes(&self) -> [(&'static str, Scalar); 6] {
        let mean = |v: &[Scalar]| v.iter().sum::<Scalar>() / v.len() as Scalar;
        [
            ("reward", mean(&self.pen_rewards)),
            ("battery_lifetime_hours", mean(&self.lifetime_hours)),
            ("energy_j", self.mean_energy_j),
            ("latency_s", self.mean_latency_s),
            ("cost", self.mean_cost),
            ("distortion", self.mean_distortion),
        ]
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct MeanAcc {
    sum: Scalar,
    count: u64,
}

impl MeanAcc {
    fn add(&mut self, v: Scalar) {
        self.sum += v;
        self.count += 1;
    }

    fn mean(&self) -> Option<Scalar> {
        (self.count > 0).then(|| self.sum / self.count as Scalar)
    }
}

/// Streams step results into an [`EpisodeMetrics`].
#[derive(Debug, Clone)]
pub struct MetricsAccumulator {
    episode: usize,
    step_duration_s: Scalar,
    pen_rewards: Vec<Scalar>,
    ran_rewards: Vec<Scalar>,
    lifetime_steps: Vec<u64>,
    energy: MeanAcc,
    latency: MeanAcc,
    cost: MeanAcc,
    distortion: MeanAcc,
    seizure_latency: MeanAcc,
    seizure_distortion: MeanAcc,
    seizure_ratio: MeanAcc,
    normal_ratio: MeanAcc,
    seizure_norm_latency: MeanAcc,
    normal_norm_latency: MeanAcc,
    violation_count: u64,
}

impl MetricsAccumulator {
    pub fn new(episode: usize, num_pens: usize, num_rans: usize, step_duration_s: Scalar) -> Self {
        Self {
            episode,
            step_duration_s,
            pen_rewards: vec![0.0; num_pens],
            ran_rewards: vec![0.0; num_rans],
            lifetime_steps: vec![0; num_pens],
            energy: MeanAcc::default(),
            latency: MeanAcc::default(),
            cost: MeanAcc::default(),
            distortion: MeanAcc::default(),
            seizure_latency: MeanAcc::default(),
            seizure_distortion: MeanAcc::default(),
            seizure_ratio: MeanAcc::default(),
            normal_ratio: MeanAcc::default(),
            seizure_norm_latency: MeanAcc::default(),
            normal_norm_latency: MeanAcc::default(),
            violation_count: 0,
        }
    }

    pub fn record_step(&mut self, result: &StepResult) {
        for (acc, r) in self.pen_rewards.iter_mut().zip(result.pen_rewards.iter()) {
            *acc += *r;
        }
        for (acc, r) in self.ran_rewards.iter_mut().zip(result.ran_rewards.iter()) {
            *acc += *r;
        }
        for (i, record) in result.records.iter().enumerate() {
            if !record.acted {
                continue;
            }
            self.lifetime_steps[i] += 1;
            self.energy.add(record.energy_j);
            self.latency.add(record.latency_s);
            self.cost.add(record.cost);
            self.distortion.add(record.distortion);
            if record.seizure {
                self.seizure_latency.add(record.latency_s);
                self.seizure_distortion.add(record.distortion);
                self.seizure_ratio.add(record.ratio);
                self.seizure_norm_latency.add(record.norm_latency_sum);
            } else {
                self.normal_ratio.add(record.ratio);
                self.normal_norm_latency.add(record.norm_latency_sum);
            }
            self.violation_count += result.violations[i].len() as u64;
        }
    }

    pub fn finish(self, clamp_events: u64) -> EpisodeMetrics {
        let hours: Vec<Scalar> = self
            .lifetime_steps
            .iter()
            .map(|&s| s as Scalar * self.step_duration_s / 3600.0)
            .collect();
        EpisodeMetrics {
            episode: self.episode,
            pen_rewards: self.pen_rewards,
            ran_rewards: self.ran_rewards,
            lifetime_steps: self.lifetime_steps,
            lifetime_hours: hours,
            mean_energy_j: self.energy.mean().unwrap_or(0.0),
            mean_latency_s: self.latency.mean().unwrap_or(0.0),
            mean_cost: self.cost.mean().unwrap_or(0.0),
            mean_distortion: self.distortion.mean().unwrap_or(0.0),
            seizure_mean_latency_s: self.seizure_latency.mean(),
            seizure_mean_distortion: self.seizure_distortion.mean(),
            seizure_mean_ratio: self.seizure_ratio.mean(),
            normal_mean_ratio: self.normal_ratio.mean(),
            seizure_mean_norm_latency: self.seizure_norm_latency.mean(),
            normal_mean_norm_latency: self.normal_norm_latency.mean(),
            violation_count: self.violation_count,
            clamp_events,
        }
    }
}

fn push_row(out: &mut String, episode: usize, metric: &str, value: Scalar) {
    let _ = writeln!(out, "{episode},{metric},{value}");
}

fn opt(value: Option<Scalar>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

/// Long-format evaluation CSV: `episode,metric,value`.
pub fn eval_csv(metrics: &[EpisodeMetrics]) -> String {
    let mut out = String::from("episode,metric,value\n");
    for m in metrics {
        for (i, r) in m.pen_rewards.iter().enumerate() {
            push_row(&mut out, m.episode, &format!("reward_pen{i}"), *r);
        }
        for (j, r) in m.ran_rewards.iter().enumerate() {
            push_row(&mut out, m.episode, &format!("reward_ran{j}"), *r);
        }
        for (i, s) in m.lifetime_steps.iter().enumerate() {
            push_row(&mut out, m.episode, &format!("lifetime_steps_pen{i}"), *s as Scalar);
        }
        for (i, h) in m.lifetime_hours.iter().enumerate() {
            push_row(&mut out, m.episode, &format!("lifetime_hours_pen{i}"), *h);
        }
        push_row(&mut out, m.episode, "mean_energy_j", m.mean_energy_j);
        push_row(&mut out, m.episode, "mean_latency_s", m.mean_latency_s);
        push_row(&mut out, m.episode, "mean_cost", m.mean_cost);
        push_row(&mut out, m.episode, "mean_distortion", m.mean_distortion);
        let _ = writeln!(out, "{},seizure_mean_latency_s,{}", m.episode, opt(m.seizure_mean_latency_s));
        let _ = writeln!(out, "{},seizure_mean_distortion,{}", m.episode, opt(m.seizure_mean_distortion));
        let _ = writeln!(out, "{},seizure_mean_ratio,{}", m.episode, opt(m.seizure_mean_ratio));
        let _ = writeln!(out, "{},normal_mean_ratio,{}", m.episode, opt(m.normal_mean_ratio));
        let _ = writeln!(out, "{},seizure_mean_norm_latency,{}", m.episode, opt(m.seizure_mean_norm_latency));
        let _ = writeln!(out, "{},normal_mean_norm_latency,{}", m.episode, opt(m.normal_mean_norm_latency));
        push_row(&mut out, m.episode, "violations", m.violation_count as Scalar);
        push_row(&mut out, m.episode, "clamp_events", m.clamp_events as Scalar);
    }
    out
}

/// Comparison CSV: one row per `(policy, seed, metric)` over the six axes.
pub fn compare_csv(rows: &[(String, u64, EpisodeMetrics)]) -> String {
    let mut out = String::from("policy,seed,metric,value\n");
    for (policy, seed, m) in rows {
        for (metric, value) in m.axes() {
            let _ = writeln!(out, "{policy},{seed},{metric},{value}");
        }
    }
    out
}

/// Summary CSV: per-policy mean of each axis over the seed set.
pub fn summary_csv(rows: &[(String, u64, EpisodeMetrics)]) -> String {
    let mut policies: Vec<String> = Vec::new();
    for (policy, _, _) in rows {
        if !policies.contains(policy) {
            policies.push(policy.clone());
        }
    }
    let mut out = String::from("policy,metric,mean\n");
    for policy in &policies {
        let group: Vec<&EpisodeMetrics> = rows.iter().filter(|(p, _, _)| p == policy).map(|(_, _, m)| m).collect();
        let axis_names = group[0].axes().map(|(name, _)| name);
        for (idx, name) in axis_names.iter().enumerate() {
            let mean = group.iter().map(|m| m.axes()[idx].1).sum::<Scalar>() / group.len() as Scalar;
            let _ = writeln!(out, "{policy},{name},{mean}");
        }
    }
    out
}

/// Training log CSV: `episode,agent,reward,critic_loss,noise_scale`.
pub fn training_csv(rows: &[crate::marl::TrainLogRow]) -> String {
    let mut out = String::from("episode,agent,reward,critic_loss,noise_scale\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.episode, r.agent, r.reward, r.critic_loss, r.noise_scale);
    }
    out
}
