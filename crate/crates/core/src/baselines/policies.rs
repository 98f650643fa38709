//! The three comparison policies: equal-share heuristic, AANSC-style
//! per-PEN grid optimizer, and ONSRA-style alternating two-block optimizer.
//!
//! These reimplement the published descriptions of the cited algorithms, not
//! the original code, and are labeled "-style" throughout.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::simplex::{project_simplex, ratio_grid, simplex_grid};
use crate::compression::compressed_length;
use crate::env::{realize_pen_step, Scenario};
use crate::Scalar;

/// Weight on constraint-violation excess inside the alternating optimizer's
/// merit function; large enough to dominate the unit-scale objective.
const EXCESS_PENALTY: Scalar = 1e3;
/// Stand-in transmission-time excess for a link with zero rate.
const ZERO_RATE_EXCESS_S: Scalar = 1e6;
/// Projected-gradient iterations per RAN per round.
const PGD_ITERS: usize = 25;
/// Finite-difference half-width for the RAN block gradient.
const PGD_FD_STEP: Scalar = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("grid resolutions must be >= 2")]
    GridResolution,
    #[error("onsra needs max_rounds >= 1")]
    Rounds,
    #[error("non-finite objective in round {0}")]
    NonFinite(usize),
    #[error("unknown policy tag {0:?}; valid tags: heuristic, aansc, onsra")]
    UnknownTag(String),
}

/// Search discretization for the grid-based policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub utilization_resolution: usize,
    pub ratio_resolution: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), BaselineError> {
        if self.utilization_resolution < 2 || self.ratio_resolution < 2 {
            return Err(BaselineError::GridResolution);
        }
        Ok(())
    }
}

/// Baseline policy selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyTag {
    Heuristic,
    Aansc,
    Onsra,
}

impl PolicyTag {
    pub const ALL: [PolicyTag; 3] = [PolicyTag::Heuristic, PolicyTag::Aansc, PolicyTag::Onsra];
}

impl std::str::FromStr for PolicyTag {
    type Err = BaselineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "heuristic" => Ok(PolicyTag::Heuristic),
            "aansc" => Ok(PolicyTag::Aansc),
            "onsra" => Ok(PolicyTag::Onsra),
            other => Err(BaselineError::UnknownTag(other.to_string())),
        }
    }
}

impl std::fmt::Display for PolicyTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PolicyTag::Heuristic => write!(f, "heuristic"),
            PolicyTag::Aansc => write!(f, "aansc"),
            PolicyTag::Onsra => write!(f, "onsra"),
        }
    }
}

/// A full joint decision: bandwidth fractions (column-simplex per RAN),
/// utilizations (row-simplex per PEN) and compression ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineDecision {
    pub bw_fractions: Vec<Vec<Scalar>>,
    pub utilization: Vec<Vec<Scalar>>,
    pub ratios: Vec<Scalar>,
}

impl BaselineDecision {
    fn uniform(n: usize, m: usize, ratio: Scalar) -> Self {
        Self {
            bw_fractions: vec![vec![1.0 / n as Scalar; m]; n],
            utilization: vec![vec![1.0 / m as Scalar; m]; n],
            ratios: vec![ratio; n],
        }
    }
}

/// Decision plus per-PEN feasibility of constraint (capacity) satisfaction.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutcome {
    pub decision: BaselineDecision,
    pub pen_feasible: Vec<bool>,
}

/// What a policy sees when deciding: the static scenario plus the current
/// fading draws, seizure statuses and alive set.
#[derive(Debug, Clone)]
pub struct ScenarioSnapshot<'a> {
    pub scenario: &'a Scenario,
    pub fading_mag_sq: Vec<Vec<Scalar>>,
    pub seizure: Vec<bool>,
    pub alive: Vec<bool>,
}

/// Per-PEN objective summand (the P1 aggregation over links) and the total
/// capacity-constraint excess of a candidate decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenEvaluation {
    pub objective: Scalar,
    pub excess_s: Scalar,
}

impl PenEvaluation {
    pub fn merit(&self) -> Scalar {
        self.objective + EXCESS_PENALTY * self.excess_s
    }
}

/// Evaluates one PEN's candidate `(utilization, ratio)` under bandwidth row
/// `theta_row`: the normal branch aggregates the weighted normalized metrics
/// over links plus the distortion term; the seizure branch mirrors the
/// seizure reward (latency and distortion only).
pub fn evaluate_pen(
    snapshot: &ScenarioSnapshot<'_>,
    pen: usize,
    theta_row: &[Scalar],
    utilization: &[Scalar],
    ratio: Scalar,
) -> PenEvaluation {
    let scenario = snapshot.scenario;
    let real = realize_pen_step(scenario, pen, &snapshot.fading_mag_sq[pen], theta_row, utilization, ratio);
    let payload = compressed_length(scenario.pens[pen].raw_bits_per_step, ratio).expect("grid ratio in range");

    let mut excess = 0.0;
    for ((used, rate), share) in real.used.iter().zip(real.rate_bps.iter()).zip(utilization.iter()) {
        if !used {
            continue;
        }
        if *rate <= 0.0 {
            excess += ZERO_RATE_EXCESS_S;
            continue;
        }
        let tx = payload * share / rate;
        excess += (tx - scenario.resource_share_s).max(0.0);
    }

    let profile = &scenario.pens[pen];
    let objective = if snapshot.seizure[pen] {
        let w = &profile.weights_seizure;
        w.latency * real.norm_latency_sum + w.distortion * real.distortion
    } else {
        let w = &profile.weights_normal;
        let mut acc = 0.0;
        for j in 0..scenario.num_rans() {
            acc += w.energy * real.norm_energy[j] + w.cost * real.norm_cost[j] + w.latency * real.norm_latency[j];
        }
        acc + w.distortion * real.distortion
    };
    PenEvaluation { objective, excess_s: excess }
}

/// Candidate ordering: feasibility excess first, then objective, then the
/// lower ratio, then lexicographic utilization.
fn candidate_better(
    (eval_a, ratio_a, util_a): (&PenEvaluation, Scalar, &[Scalar]),
    (eval_b, ratio_b, util_b): (&PenEvaluation, Scalar, &[Scalar]),
) -> bool {
    if eval_a.excess_s != eval_b.excess_s {
        return eval_a.excess_s < eval_b.excess_s;
    }
    if eval_a.objective != eval_b.objective {
        return eval_a.objective < eval_b.objective;
    }
    if ratio_a != ratio_b {
        return ratio_a < ratio_b;
    }
    util_a < util_b
}

/// Exhaustive per-PEN search over the utilization simplex grid and ratio
/// grid, with `theta_row` fixed. Returns the best candidate.
fn pen_grid_search(
    snapshot: &ScenarioSnapshot<'_>,
    pen: usize,
    theta_row: &[Scalar],
    grid: &GridSpec,
) -> (Vec<Scalar>, Scalar, PenEvaluation) {
    let scenario = snapshot.scenario;
    let utils = simplex_grid(scenario.num_rans(), grid.utilization_resolution);
    let ratios = ratio_grid(scenario.kappa_max(), grid.ratio_resolution);
    let mut best: Option<(Vec<Scalar>, Scalar, PenEvaluation)> = None;
    for util in &utils {
        for &ratio in &ratios {
            let eval = evaluate_pen(snapshot, pen, theta_row, util, ratio);
            let replace = match &best {
                None => true,
                Some((bu, br, be)) => candidate_better((&eval, ratio, util), (be, *br, bu)),
            };
            if replace {
                best = Some((util.clone(), ratio, eval));
            }
        }
    }
    best.expect("grids are non-empty")
}

/// Equal shares everywhere; the ratio is the smallest grid value keeping
/// every link within its resource share, or the maximum ratio when none does.
pub fn heuristic_policy(snapshot: &ScenarioSnapshot<'_>, grid: &GridSpec) -> Result<PolicyOutcome, BaselineError> {
    grid.validate()?;
    let scenario = snapshot.scenario;
    let n = scenario.num_pens();
    let m = scenario.num_rans();
    let mut outcome = PolicyOutcome {
        decision: BaselineDecision::uniform(n, m, 0.0),
        pen_feasible: vec![true; n],
    };
    let theta_row = vec![1.0 / n as Scalar; m];
    let utilization = vec![1.0 / m as Scalar; m];
    for i in 0..n {
        if !snapshot.alive[i] {
            continue;
        }
        let mut chosen = None;
        for &ratio in &ratio_grid(scenario.kappa_max(), grid.ratio_resolution) {
            let eval = evaluate_pen(snapshot, i, &theta_row, &utilization, ratio);
            if eval.excess_s == 0.0 {
                chosen = Some(ratio);
                break;
            }
        }
        match chosen {
            Some(ratio) => outcome.decision.ratios[i] = ratio,
            None => {
                outcome.decision.ratios[i] = scenario.kappa_max();
                outcome.pen_feasible[i] = false;
            }
        }
    }
    Ok(outcome)
}

/// Equal bandwidth shares; each PEN independently optimizes its utilization
/// split and ratio by exhaustive grid search.
pub fn aansc_policy(snapshot: &ScenarioSnapshot<'_>, grid: &GridSpec) -> Result<PolicyOutcome, BaselineError> {
    grid.validate()?;
    let scenario = snapshot.scenario;
    let n = scenario.num_pens();
    let m = scenario.num_rans();
    let mut outcome = PolicyOutcome {
        decision: BaselineDecision::uniform(n, m, 0.0),
        pen_feasible: vec![true; n],
    };
    let theta_row = vec![1.0 / n as Scalar; m];
    for i in 0..n {
        if !snapshot.alive[i] {
            continue;
        }
        let (util, ratio, eval) = pen_grid_search(snapshot, i, &theta_row, grid);
        outcome.decision.utilization[i] = util;
        outcome.decision.ratios[i] = ratio;
        outcome.pen_feasible[i] = eval.excess_s == 0.0;
    }
    Ok(outcome)
}

fn total_merit(snapshot: &ScenarioSnapshot<'_>, decision: &BaselineDecision) -> Scalar {
    let mut merit = 0.0;
    for i in 0..snapshot.scenario.num_pens() {
        if !snapshot.alive[i] {
            continue;
        }
        merit += evaluate_pen(snapshot, i, &decision.bw_fractions[i], &decision.utilization[i], decision.ratios[i]).merit();
    }
    merit
}

fn set_theta_column(decision: &mut BaselineDecision, ran: usize, column: &[Scalar]) {
    for (i, &v) in column.iter().enumerate() {
        decision.bw_fractions[i][ran] = v;
    }
}

/// Alternating two-block optimizer: RANs run projected-gradient descent on
/// their bandwidth columns, PENs rerun the grid search, until the merit
/// improves by less than `tol` or `max_rounds` is reached.
///
/// Alternation from a single symmetric start can stall on coordination
/// optima (every PEN crowding the same RAN), so the alternation restarts
/// from a small deterministic set of initial allocations and keeps the best
/// final merit. Returns the winning outcome and its per-round merit trace
/// (nonincreasing).
pub fn onsra_policy(
    snapshot: &ScenarioSnapshot<'_>,
    grid: &GridSpec,
    max_rounds: usize,
    tol: Scalar,
) -> Result<(PolicyOutcome, Vec<Scalar>), BaselineError> {
    grid.validate()?;
    if max_rounds == 0 {
        return Err(BaselineError::Rounds);
    }
    let scenario = snapshot.scenario;
    let n = scenario.num_pens();
    let m = scenario.num_rans();

    let mut starts: Vec<Vec<Vec<Scalar>>> = Vec::new();
    // Uniform columns.
    starts.push(vec![vec![1.0 / n as Scalar; m]; n]);
    if n > 1 {
        // Round-robin dedication: RAN j serves one PEN exclusively.
        for shift in 0..2 {
            let mut theta = vec![vec![0.0; m]; n];
            for (j, column_owner) in (0..m).map(|j| (j, (j + shift) % n)) {
                theta[column_owner][j] = 1.0;
            }
            starts.push(theta);
        }
        // Gain-greedy dedication: each RAN serves its best channel.
        let mut theta = vec![vec![0.0; m]; n];
        #[allow(clippy::needless_range_loop)]
        for j in 0..m {
            let best = (0..n)
                .max_by(|&a, &b| {
                    snapshot.fading_mag_sq[a][j]
                        .partial_cmp(&snapshot.fading_mag_sq[b][j])
                        .unwrap()
                })
                .unwrap();
            theta[best][j] = 1.0;
        }
        starts.push(theta);
    }

    let mut best: Option<(PolicyOutcome, Vec<Scalar>)> = None;
    for theta in starts {
        let (outcome, trace) = alternate(snapshot, grid, max_rounds, tol, theta)?;
        let replace = match &best {
            None => true,
            Some((_, best_trace)) => trace.last().unwrap() < best_trace.last().unwrap(),
        };
        if replace {
            best = Some((outcome, trace));
        }
    }
    Ok(best.expect("at least one start"))
}

fn alternate(
    snapshot: &ScenarioSnapshot<'_>,
    grid: &GridSpec,
    max_rounds: usize,
    tol: Scalar,
    initial_theta: Vec<Vec<Scalar>>,
) -> Result<(PolicyOutcome, Vec<Scalar>), BaselineError> {
    let scenario = snapshot.scenario;
    let n = scenario.num_pens();
    let m = scenario.num_rans();
    let mut decision = BaselineDecision::uniform(n, m, 0.0);
    decision.bw_fractions = initial_theta;

    // Initial PEN block under the starting bandwidth split.
    for i in 0..n {
        if !snapshot.alive[i] {
            continue;
        }
        let (util, ratio, _) = pen_grid_search(snapshot, i, &decision.bw_fractions[i], grid);
        decision.utilization[i] = util;
        decision.ratios[i] = ratio;
    }
    let mut merit = total_merit(snapshot, &decision);
    if !merit.is_finite() {
        return Err(BaselineError::NonFinite(0));
    }
    let mut trace = vec![merit];

    for round in 1..=max_rounds {
        // RAN block: projected gradient descent per bandwidth column, then a
        // cheap probe of the simplex vertices and the uniform column.
        for j in 0..m {
            let mut column: Vec<Scalar> = (0..n).map(|i| decision.bw_fractions[i][j]).collect();
            let mut column_merit = merit_with_column(snapshot, &decision, j, &column);
            for _ in 0..PGD_ITERS {
                let grad = column_gradient(snapshot, &decision, j, &column);
                let mut step = 1.0;
                let mut improved = false;
                while step > 1e-7 {
                    let candidate: Vec<Scalar> =
                        project_simplex(&column.iter().zip(grad.iter()).map(|(&x, &g)| x - step * g).collect::<Vec<_>>());
                    let candidate_merit = merit_with_column(snapshot, &decision, j, &candidate);
                    if candidate_merit < column_merit - 1e-15 {
                        column = candidate;
                        column_merit = candidate_merit;
                        improved = true;
                        break;
                    }
                    step *= 0.5;
                }
                if !improved {
                    break;
                }
            }
            let mut probes: Vec<Vec<Scalar>> = (0..n)
                .map(|i| {
                    let mut v = vec![0.0; n];
                    v[i] = 1.0;
                    v
                })
                .collect();
            probes.push(vec![1.0 / n as Scalar; n]);
            for probe in probes {
                let probe_merit = merit_with_column(snapshot, &decision, j, &probe);
                if probe_merit < column_merit - 1e-15 {
                    column = probe;
                    column_merit = probe_merit;
                }
            }
            set_theta_column(&mut decision, j, &column);
        }

        // PEN block: exhaustive grid search under the new bandwidth rows.
        for i in 0..n {
            if !snapshot.alive[i] {
                continue;
            }
            let (util, ratio, _) = pen_grid_search(snapshot, i, &decision.bw_fractions[i], grid);
            decision.utilization[i] = util;
            decision.ratios[i] = ratio;
        }

        let new_merit = total_merit(snapshot, &decision);
        if !new_merit.is_finite() {
            return Err(BaselineError::NonFinite(round));
        }
        let improvement = merit - new_merit;
        merit = new_merit;
        trace.push(merit);
        if improvement < tol {
            break;
        }
    }

    let pen_feasible = (0..n)
        .map(|i| {
            !snapshot.alive[i]
                || evaluate_pen(snapshot, i, &decision.bw_fractions[i], &decision.utilization[i], decision.ratios[i]).excess_s
                    == 0.0
        })
        .collect();
    Ok((PolicyOutcome { decision, pen_feasible }, trace))
}

fn merit_with_column(snapshot: &ScenarioSnapshot<'_>, decision: &BaselineDecision, ran: usize, column: &[Scalar]) -> Scalar {
    let mut probe = decision.clone();
    set_theta_column(&mut probe, ran, column);
    total_merit(snapshot, &probe)
}

/// Central finite differences of the merit in the bandwidth column, probing
/// inside the box `[0, 1]` per coordinate.
fn column_gradient(snapshot: &ScenarioSnapshot<'_>, decision: &BaselineDecision, ran: usize, column: &[Scalar]) -> Vec<Scalar> {
    let mut grad = vec![0.0; column.len()];
    for i in 0..column.len() {
        if !snapshot.alive[i] {
            continue;
        }
        let mut plus = column.to_vec();
        plus[i] = (plus[i] + PGD_FD_STEP).min(1.0);
        let mut minus = column.to_vec();
        minus[i] = (minus[i] - PGD_FD_STEP).max(0.0);
        let width = plus[i] - minus[i];
        if width <= 0.0 {
            continue;
        }
        let fp = merit_with_column(snapshot, decision, ran, &plus);
        let fm = merit_with_column(snapshot, decision, ran, &minus);
        grad[i] = (fp - fm) / width;
    }
    grad
}

/// Computes a policy's joint decision for the given snapshot.
pub fn decide(
    tag: PolicyTag,
    snapshot: &ScenarioSnapshot<'_>,
    grid: &GridSpec,
    onsra_max_rounds: usize,
    onsra_tol: Scalar,
) -> Result<PolicyOutcome, BaselineError> {
    match tag {
        PolicyTag::Heuristic => heuristic_policy(snapshot, grid),
        PolicyTag::Aansc => aansc_policy(snapshot, grid),
        PolicyTag::Onsra => onsra_policy(snapshot, grid, onsra_max_rounds, onsra_tol).map(|(outcome, _)| outcome),
    }
}
