//! Alternating optimisation of association/bandwidth and ABS placement, plus
//! the k-means baseline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::association::{
    backhaul_distance, build_bilp, mbs_distance, solve_bilp, AssociationProblem,
};
use crate::bandwidth::{refine_bandwidth, LinkDemand};
use crate::channel::{
    backhaul_capacity, in_los_cone, path_loss_linear, ChannelParams, PathLossKind,
};
use crate::error::{Error, Result};
use crate::geometry::{Point2, Point3};
use crate::placement::{build_qcqp, place_abs, PlacementResult, DEFAULT_SAMPLES};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InfeasibilityPolicy {
    /// Keep the previous position of an ABS whose placement failed.
    #[default]
    KeepIncumbent,
    /// Move to the least-violating point found.
    MinViolation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialPlacement {
    /// Uniform in the region, altitude uniform in `[z_min, z_max / 2]`.
    Random,
    /// The k-means geometry of [`baseline`].
    #[default]
    Kmeans,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Convergence threshold on the per-iteration power decrease (W).
    pub epsilon: f64,
    pub max_outer_iterations: usize,
    pub randomization_samples: usize,
    pub seed: u64,
    pub infeasibility_policy: InfeasibilityPolicy,
    pub initial_placement: InitialPlacement,
    pub sdp_tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            max_outer_iterations: 50,
            randomization_samples: DEFAULT_SAMPLES,
            seed: 0,
            infeasibility_policy: InfeasibilityPolicy::KeepIncumbent,
            initial_placement: InitialPlacement::Kmeans,
            sdp_tolerance: 1e-6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config("solver.epsilon", format!("must be positive, got {}", self.epsilon)));
        }
        if self.max_outer_iterations == 0 {
            return Err(Error::config("solver.max_outer_iterations", "must be at least 1"));
        }
        if self.randomization_samples == 0 {
            return Err(Error::config("solver.randomization_samples", "must be at least 1"));
        }
        if !(self.sdp_tolerance > 0.0 && self.sdp_tolerance < 1.0) {
            return Err(Error::config("solver.sdp_tolerance", format!("must lie in (0, 1), got {}", self.sdp_tolerance)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Association,
    Placement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub phase: Phase,
    pub total_power: f64,
    pub abs_positions: Vec<Point3>,
    /// Placement feasibility per ABS (all true after an association step).
    pub feasible: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub abs_positions: Vec<Point3>,
    /// Serving column per user: 0 is the MBS, `j + 1` is ABS `j`.
    pub serving: Vec<usize>,
    /// Bandwidth fraction of each user at its serving BS.
    pub beta: Vec<f64>,
    /// Transmit power (W) of each user's link.
    pub link_power: Vec<f64>,
    pub total_power: f64,
    pub abs_total_power: f64,
    pub mbs_power: f64,
    /// Uncached traffic (bit/s) each ABS pulls over its backhaul.
    pub backhaul_usage: Vec<f64>,
    pub backhaul_capacity: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceRecord>,
}

impl Solution {
    pub fn rho(&self) -> Vec<Vec<bool>> {
        crate::association::rho_matrix(&self.serving, self.abs_positions.len() + 1)
    }

    pub fn abs_users(&self) -> usize {
        self.serving.iter().filter(|&&s| s > 0).count()
    }

    /// Mean backhaul usage over ABSs (0 without ABSs).
    pub fn mean_backhaul_usage(&self) -> f64 {
        if self.backhaul_usage.is_empty() {
            0.0
        } else {
            self.backhaul_usage.iter().sum::<f64>() / self.backhaul_usage.len() as f64
        }
    }
}

/// Path factor `h / g` of user `i`'s link to column `serving`.
pub fn link_demand(
    scenario: &Scenario,
    params: &ChannelParams,
    positions: &[Point3],
    i: usize,
    serving: usize,
) -> Result<LinkDemand> {
    let u = &scenario.users[i];
    let path_factor = if serving == 0 {
        path_loss_linear(PathLossKind::MbsUser, mbs_distance(&scenario.mbs_position, &u.position), params)?
    } else {
        let p = &positions[serving - 1];
        let d = p.dist_ground(&u.position);
        path_loss_linear(PathLossKind::AbsLos, d, params)? / params.geometry().g0
    };
    Ok(LinkDemand { eta: u.rate_demand, path_factor })
}

/// Per-link powers, total power and per-column totals (`J + 1` entries).
pub fn total_power(
    serving: &[usize],
    beta: &[f64],
    positions: &[Point3],
    scenario: &Scenario,
    params: &ChannelParams,
) -> Result<(f64, Vec<f64>)> {
    let links = link_powers(serving, beta, positions, scenario, params)?;
    let mut per_bs = vec![0.0; positions.len() + 1];
    for (&s, p) in serving.iter().zip(&links) {
        per_bs[s] += p;
    }
    Ok((per_bs.iter().sum(), per_bs))
}

pub fn link_powers(
    serving: &[usize],
    beta: &[f64],
    positions: &[Point3],
    scenario: &Scenario,
    params: &ChannelParams,
) -> Result<Vec<f64>> {
    if serving.len() != scenario.user_count() || beta.len() != serving.len() {
        return Err(Error::invalid("association and bandwidth vectors must cover every user"));
    }
    serving
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            if s > positions.len() {
                return Err(Error::invalid(format!("user {i} served by unknown BS {s}")));
            }
            let l = link_demand(scenario, params, positions, i, s)?;
            Ok(crate::bandwidth::link_power(&l, beta[i], params))
        })
        .collect()
}

/// KKT bandwidth split at every BS for a fixed association.
pub fn refine_all(
    serving: &[usize],
    positions: &[Point3],
    scenario: &Scenario,
    params: &ChannelParams,
) -> Result<Vec<f64>> {
    let mut beta = vec![0.0; serving.len()];
    for col in 0..=positions.len() {
        let members: Vec<usize> = (0..serving.len()).filter(|&i| serving[i] == col).collect();
        if members.is_empty() {
            continue;
        }
        let links = members
            .iter()
            .map(|&i| link_demand(scenario, params, positions, i, col))
            .collect::<Result<Vec<_>>>()?;
        let alloc = refine_bandwidth(&links, params)?;
        for (&i, b) in members.iter().zip(alloc.beta) {
            beta[i] = b;
        }
    }
    Ok(beta)
}

/// Equal split among the users of each BS.
pub fn equal_beta(serving: &[usize], columns: usize) -> Vec<f64> {
    let mut count = vec![0usize; columns];
    for &s in serving {
        count[s] += 1;
    }
    serving.iter().map(|&s| 1.0 / count[s] as f64).collect()
}

/// Position to adopt for an ABS whose placement came back infeasible.
pub fn handle_infeasible_placement(
    policy: InfeasibilityPolicy,
    incumbent: Point3,
    result: &PlacementResult,
) -> Point3 {
    match policy {
        InfeasibilityPolicy::KeepIncumbent => incumbent,
        InfeasibilityPolicy::MinViolation => result.position,
    }
}

/// Deterministic stream for ABS `abs` at outer iteration `iteration`.
fn placement_rng(seed: u64, iteration: usize, abs: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((iteration as u64) << 32) | abs as u64);
    rng
}

pub fn initial_positions(scenario: &Scenario, params: &ChannelParams, seed: u64) -> Vec<Point3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hi = (0.5 * params.z_max).max(params.z_min);
    (0..scenario.abs_count)
        .map(|_| {
            let x = rng.random::<f64>() * scenario.region_side;
            let y = rng.random::<f64>() * scenario.region_side;
            let z = params.z_min + rng.random::<f64>() * (hi - params.z_min);
            Point3::new(x, y, z)
        })
        .collect()
}

struct State {
    serving: Vec<usize>,
    beta: Vec<f64>,
    power: f64,
}

fn association_step(
    scenario: &Scenario,
    params: &ChannelParams,
    positions: &[Point3],
    previous: Option<&[usize]>,
) -> Result<(State, AssociationProblem)> {
    let problem = build_bilp(scenario, positions, params)?;
    let result = solve_bilp(&problem)?;
    if !result.optimal {
        log::warn!("association node budget exhausted; using best incumbent");
    }
    let beta = refine_all(&result.serving, positions, scenario, params)?;
    let (power, _) = total_power(&result.serving, &beta, positions, scenario, params)?;
    let mut state = State { serving: result.serving, beta, power };
    // the equal-share pricing can pick a worse association than the current one
    if let Some(prev) = previous.filter(|p| problem.evaluate(p).is_some()) {
        let beta = refine_all(prev, positions, scenario, params)?;
        let (power, _) = total_power(prev, &beta, positions, scenario, params)?;
        if power < state.power {
            state = State { serving: prev.to_vec(), beta, power };
        }
    }
    Ok((state, problem))
}

pub fn optimize(scenario: &Scenario, params: &ChannelParams, config: &SolverConfig) -> Result<Solution> {
    params.validate()?;
    config.validate()?;
    let j_count = scenario.abs_count;
    let mut positions = match config.initial_placement {
        InitialPlacement::Random => initial_positions(scenario, params, config.seed),
        InitialPlacement::Kmeans => kmeans_layout(scenario, params, config.seed).0,
    };
    let mut trace = Vec::new();
    let mut state: Option<State> = None;
    let mut previous_power = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    for t in 1..=config.max_outer_iterations {
        iterations = t;
        let (st, _) = association_step(scenario, params, &positions, state.as_ref().map(|s| s.serving.as_slice()))?;
        trace.push(TraceRecord {
            iteration: t,
            phase: Phase::Association,
            total_power: st.power,
            abs_positions: positions.clone(),
            feasible: vec![true; j_count],
        });
        if j_count == 0 {
            state = Some(st);
            converged = true;
            break;
        }

        let results: Vec<PlacementResult> = (0..j_count)
            .into_par_iter()
            .map(|j| -> Result<PlacementResult> {
                let inst = build_qcqp(scenario, params, &st.serving, &st.beta, j)?;
                let mut rng = placement_rng(config.seed, t, j);
                Ok(place_abs(&inst, config.randomization_samples, &mut rng, Some(positions[j])))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut feasible = Vec::with_capacity(j_count);
        for (j, r) in results.iter().enumerate() {
            feasible.push(r.feasible);
            positions[j] = if r.feasible {
                r.position
            } else {
                log::debug!("ABS {j}: placement infeasible (violation {:.3e})", r.max_violation);
                handle_infeasible_placement(config.infeasibility_policy, positions[j], r)
            };
        }
        let (power, _) = total_power(&st.serving, &st.beta, &positions, scenario, params)?;
        trace.push(TraceRecord {
            iteration: t,
            phase: Phase::Placement,
            total_power: power,
            abs_positions: positions.clone(),
            feasible,
        });
        state = Some(State { power, ..st });
        if previous_power - power < config.epsilon {
            converged = true;
            break;
        }
        previous_power = power;
    }

    let mut st = state.ok_or_else(|| Error::Solver("no outer iteration ran".into()))?;
    // re-associate if the final positions no longer support the association
    let check = build_bilp(scenario, &positions, params)?;
    if check.evaluate(&st.serving).is_none() {
        log::debug!("final positions invalidate the association; re-associating");
        st = association_step(scenario, params, &positions, None)?.0;
    }
    finish(scenario, params, positions, st.serving, st.beta, iterations, converged, trace)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    scenario: &Scenario,
    params: &ChannelParams,
    positions: Vec<Point3>,
    serving: Vec<usize>,
    beta: Vec<f64>,
    iterations: usize,
    converged: bool,
    trace: Vec<TraceRecord>,
) -> Result<Solution> {
    let link_power = link_powers(&serving, &beta, &positions, scenario, params)?;
    let mut per_bs = vec![0.0; positions.len() + 1];
    for (&s, p) in serving.iter().zip(&link_power) {
        per_bs[s] += p;
    }
    let mut backhaul_usage = vec![0.0; positions.len()];
    for (i, &s) in serving.iter().enumerate() {
        if s > 0 && !scenario.cached(i, s) {
            backhaul_usage[s - 1] += scenario.users[i].rate_demand;
        }
    }
    let backhaul_capacity = positions
        .iter()
        .map(|p| backhaul_capacity(backhaul_distance(&scenario.mbs_position, p), scenario.abs_count, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(Solution {
        total_power: per_bs.iter().sum(),
        abs_total_power: per_bs[1..].iter().sum(),
        mbs_power: per_bs[0],
        abs_positions: positions,
        serving,
        beta,
        link_power,
        backhaul_usage,
        backhaul_capacity,
        iterations,
        converged,
        trace,
    })
}

/// Lloyd's k-means with k-means++ seeding; returns centroids and labels.
pub fn kmeans<R: Rng + ?Sized>(points: &[Point2], k: usize, rng: &mut R, max_iter: usize) -> (Vec<Point2>, Vec<usize>) {
    if points.is_empty() || k == 0 {
        return (Vec::new(), vec![0; points.len()]);
    }
    let mut centroids = vec![points[rng.random_range(0..points.len())]];
    while centroids.len() < k {
        let d2: Vec<f64> = points
            .iter()
            .map(|p| centroids.iter().map(|c| c.dist_sq(p)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if u < *d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            pick
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[next]);
    }
    let nearest = |p: &Point2, cs: &[Point2]| {
        let mut best = 0;
        for (j, c) in cs.iter().enumerate() {
            if c.dist_sq(p) < cs[best].dist_sq(p) {
                best = j;
            }
        }
        best
    };
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
    for _ in 0..max_iter {
        let mut sum = vec![(0.0, 0.0, 0usize); k];
        for (p, &l) in points.iter().zip(&labels) {
            sum[l].0 += p.x;
            sum[l].1 += p.y;
            sum[l].2 += 1;
        }
        for (j, s) in sum.iter().enumerate() {
            if s.2 > 0 {
                centroids[j] = Point2::new(s.0 / s.2 as f64, s.1 / s.2 as f64);
            } else {
                // re-seed an empty cluster at the worst-served point
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        let da = centroids[labels[a]].dist_sq(&points[a]);
                        let db = centroids[labels[b]].dist_sq(&points[b]);
                        da.total_cmp(&db)
                    })
                    .unwrap_or(0);
                centroids[j] = points[far];
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    (centroids, labels)
}

/// k-means ground positions with altitudes just covering each cluster, and
/// the nearest-centroid association.
pub fn kmeans_layout(scenario: &Scenario, params: &ChannelParams, seed: u64) -> (Vec<Point3>, Vec<usize>) {
    let j_count = scenario.abs_count;
    let geom = params.geometry();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = scenario.positions();
    let (centroids, _) = kmeans(&points, j_count, &mut rng, 300);

    // closest horizontal distance
    let serving: Vec<usize> = points
        .iter()
        .map(|p| {
            let mut best = 0;
            for (j, c) in centroids.iter().enumerate() {
                if c.dist_sq(p) < centroids[best].dist_sq(p) {
                    best = j;
                }
            }
            best + 1
        })
        .collect();

    let mut positions = Vec::with_capacity(j_count);
    for (j, c) in centroids.iter().enumerate() {
        let r = serving
            .iter()
            .zip(&points)
            .filter(|(&s, _)| s == j + 1)
            .map(|(_, p)| c.dist(p))
            .fold(0.0, f64::max);
        let z = geom.min_altitude(r).min(params.z_max).max(params.z_min);
        positions.push(c.at_height(z));
    }
    (positions, serving)
}

/// k-means placement with cone-fitting altitudes and greedy backhaul
/// trimming; ABS users share bandwidth equally.
pub fn baseline(scenario: &Scenario, params: &ChannelParams, config: &SolverConfig) -> Result<Solution> {
    params.validate()?;
    config.validate()?;
    let j_count = scenario.abs_count;
    if j_count == 0 {
        return optimize(scenario, params, config);
    }
    let geom = params.geometry();
    let (positions, mut serving) = kmeans_layout(scenario, params, config.seed);
    for (i, s) in serving.iter_mut().enumerate() {
        if *s == 0 {
            continue;
        }
        let u = &scenario.users[i];
        let out_of_cone = !in_los_cone(&positions[*s - 1], &u.position, &geom);
        let delay_blocked = u.delay_sensitive && !scenario.cached(i, *s);
        if out_of_cone || delay_blocked {
            *s = 0;
        }
    }
    for (j, pos) in positions.iter().enumerate() {
        let col = j + 1;
        let cap = backhaul_capacity(backhaul_distance(&scenario.mbs_position, pos), j_count, params)?;
        let load = |i: usize| if scenario.cached(i, col) { 0.0 } else { scenario.users[i].rate_demand };
        loop {
            let used: f64 = (0..serving.len()).filter(|&i| serving[i] == col).map(load).sum();
            if used <= cap {
                break;
            }
            // evict the heaviest backhaul user, lowest index on ties
            let victim = (0..serving.len())
                .filter(|&i| serving[i] == col)
                .max_by(|&a, &b| load(a).total_cmp(&load(b)).then(b.cmp(&a)))
                .ok_or_else(|| Error::Solver("backhaul overload with no users".into()))?;
            serving[victim] = 0;
        }
    }

    let mut beta = equal_beta(&serving, j_count + 1);
    // the MBS tier is handled exactly as in `optimize`
    let mbs_users: Vec<usize> = (0..serving.len()).filter(|&i| serving[i] == 0).collect();
    if !mbs_users.is_empty() {
        let links = mbs_users
            .iter()
            .map(|&i| link_demand(scenario, params, &positions, i, 0))
            .collect::<Result<Vec<_>>>()?;
        for (&i, b) in mbs_users.iter().zip(refine_bandwidth(&links, params)?.beta) {
            beta[i] = b;
        }
    }
    let (power, _) = total_power(&serving, &beta, &positions, scenario, params)?;
    let trace = vec![TraceRecord {
        iteration: 1,
        phase: Phase::Placement,
        total_power: power,
        abs_positions: positions.clone(),
        feasible: vec![true; j_count],
    }];
    finish(scenario, params, positions, serving, beta, 1, true, trace)
}

/// Power (W) if every user were served by the MBS with refined bandwidth.
pub fn all_mbs_power(scenario: &Scenario, params: &ChannelParams) -> Result<f64> {
    let serving = vec![0; scenario.user_count()];
    let positions = vec![Point3::new(0.0, 0.0, params.z_min); scenario.abs_count];
    let beta = refine_all(&serving, &positions, scenario, params)?;
    Ok(total_power(&serving, &beta, &positions, scenario, params)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{ScenarioSpec, User};

    fn scenario(seed: u64, n: usize) -> Scenario {
        let spec = ScenarioSpec { n_users: n, ..ScenarioSpec::default() };
        spec.generate(&mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn no_abs_means_all_mbs() {
        let s = scenario(1, 20).with_abs_count(0).unwrap();
        let p = ChannelParams::default();
        let sol = optimize(&s, &p, &SolverConfig::default()).unwrap();
        assert!(sol.serving.iter().all(|&v| v == 0));
        assert_eq!(sol.iterations, 1);
        assert!(sol.converged);
        let base = baseline(&s, &p, &SolverConfig::default()).unwrap();
        assert_eq!(base, sol);
    }

    #[test]
    fn trace_is_non_increasing() {
        let s = scenario(3, 40);
        let sol = optimize(&s, &ChannelParams::default(), &SolverConfig { seed: 5, ..Default::default() }).unwrap();
        for w in sol.trace.windows(2) {
            assert!(w[1].total_power <= w[0].total_power * (1.0 + 1e-9), "{:?} {} -> {:?} {}", w[0].phase, w[0].total_power, w[1].phase, w[1].total_power);
        }
        let (total, _) = total_power(&sol.serving, &sol.beta, &sol.abs_positions, &s, &ChannelParams::default()).unwrap();
        assert!((total - sol.total_power).abs() <= 1e-9 * total);
    }

    #[test]
    fn deterministic_given_seed() {
        let s = scenario(4, 30);
        let c = SolverConfig { seed: 9, ..Default::default() };
        let a = optimize(&s, &ChannelParams::default(), &c).unwrap();
        let b = optimize(&s, &ChannelParams::default(), &c).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn clustered_users_beat_all_mbs() {
        let users: Vec<User> = (0..8)
            .map(|i| User {
                position: Point2::new(40.0 + (i % 3) as f64 * 10.0, 40.0 + (i / 3) as f64 * 10.0),
                rate_demand: 5e6,
                delay_sensitive: false,
                requested_content: 1,
            })
            .collect();
        let s = Scenario::new(100.0, Point2::new(0.0, 0.0), users, 1, 10, 10, 0.8).unwrap();
        let p = ChannelParams::default();
        let sol = optimize(&s, &p, &SolverConfig::default()).unwrap();
        assert!(sol.total_power < all_mbs_power(&s, &p).unwrap());
        assert_eq!(sol.abs_users(), 8);
    }

    #[test]
    fn doubling_distances_quadruples_abs_power() {
        let make = |k: f64| {
            let users = (0..4)
                .map(|i| User {
                    position: Point2::new(1000.0 + k * 20.0 * i as f64, 1000.0 + k * 15.0),
                    rate_demand: 5e6,
                    delay_sensitive: false,
                    requested_content: 1,
                })
                .collect();
            Scenario::new(3000.0, Point2::new(0.0, 0.0), users, 1, 10, 2, 0.8).unwrap()
        };
        let p = ChannelParams::default();
        let serving = vec![1, 1, 0, 1];
        let beta = equal_beta(&serving, 2);
        let (_, a) = total_power(&serving, &beta, &[Point3::new(1000.0, 1000.0, 100.0)], &make(1.0), &p).unwrap();
        let (_, b) = total_power(&serving, &beta, &[Point3::new(1000.0, 1000.0, 200.0)], &make(2.0), &p).unwrap();
        assert!((b[1] - 4.0 * a[1]).abs() <= 1e-9 * b[1]);
    }

    #[test]
    fn kmeans_single_cluster_is_mean() {
        let pts = vec![Point2::new(0.0, 0.0), Point2::new(2.0, 0.0), Point2::new(1.0, 3.0)];
        let (c, _) = kmeans(&pts, 1, &mut ChaCha8Rng::seed_from_u64(0), 10);
        assert!((c[0].x - 1.0).abs() < 1e-12 && (c[0].y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tiny_backhaul_still_feasible() {
        let s = scenario(6, 30);
        let p = ChannelParams { w_backhaul: 1e3, ..ChannelParams::default() };
        let sol = optimize(&s, &p, &SolverConfig::default()).unwrap();
        for (u, c) in sol.backhaul_usage.iter().zip(&sol.backhaul_capacity) {
            assert!(u <= c);
        }
    }
}
