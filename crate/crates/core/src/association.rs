//! User-to-BS association as a binary program, solved by best-bound
//! branch-and-bound over LP relaxations.
//!
//! Column 0 is the MBS; column `j + 1` is ABS `j`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::channel::{backhaul_capacity, in_los_cone, power_coefficient, ChannelParams, ServingBs};
use crate::error::{Error, Result};
use crate::geometry::{Point2, Point3};
use crate::kernel::{solve_lp, LpProblem, StatusKind};
use crate::scenario::Scenario;

pub const NODE_BUDGET: usize = 100_000;
/// Default relative optimality gap of the branch and bound.
pub const DEFAULT_GAP: f64 = 1e-6;
const EXACT_GAP: f64 = 1e-10;
/// Relative slack allowed on backhaul capacity rows.
pub const CAPACITY_TOL: f64 = 1e-9;
/// MBS links shorter than this are evaluated at this distance (m).
pub const MIN_MBS_DISTANCE: f64 = 1.0;
const INTEGRAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationProblem {
    /// Power (W) to serve user `i` from BS `j`; infinite when ineligible.
    pub cost: Vec<Vec<f64>>,
    /// Backhaul load `eta_i (1 - f_ij)` (bit/s); column 0 is unused.
    pub load: Vec<Vec<f64>>,
    /// Backhaul capacity per column; infinite for the MBS.
    pub capacity: Vec<f64>,
}

impl AssociationProblem {
    pub fn users(&self) -> usize {
        self.cost.len()
    }

    pub fn columns(&self) -> usize {
        self.capacity.len()
    }

    pub fn eligible(&self, i: usize, j: usize) -> bool {
        self.cost[i][j].is_finite()
    }

    pub fn validate(&self) -> Result<()> {
        let cols = self.columns();
        if cols == 0 || self.capacity[0] != f64::INFINITY {
            return Err(Error::invalid("column 0 must be the uncapacitated MBS"));
        }
        if self.load.len() != self.users() {
            return Err(Error::invalid("load and cost matrices differ in size"));
        }
        for (i, (c, w)) in self.cost.iter().zip(&self.load).enumerate() {
            if c.len() != cols || w.len() != cols {
                return Err(Error::invalid(format!("row {i} has the wrong length")));
            }
            if !c[0].is_finite() {
                return Err(Error::invalid(format!("user {i} cannot reach the MBS")));
            }
            if c.iter().any(|v| v.is_nan() || *v < 0.0) || w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::invalid(format!("row {i} has negative or NaN entries")));
            }
        }
        Ok(())
    }

    /// Cost of a full assignment, or `None` if it breaks a constraint.
    pub fn evaluate(&self, serving: &[usize]) -> Option<f64> {
        if serving.len() != self.users() {
            return None;
        }
        let mut used = vec![0.0; self.columns()];
        let mut total = 0.0;
        for (i, &j) in serving.iter().enumerate() {
            if j >= self.columns() || !self.eligible(i, j) {
                return None;
            }
            total += self.cost[i][j];
            used[j] += self.load[i][j];
        }
        let fits = (1..self.columns()).all(|j| used[j] <= self.capacity[j] * (1.0 + CAPACITY_TOL));
        fits.then_some(total)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationResult {
    /// Serving column per user.
    pub serving: Vec<usize>,
    pub objective: f64,
    /// False when the node budget ran out before optimality was proven.
    pub optimal: bool,
    pub nodes: usize,
}

/// `rho` as an `I x (J+1)` boolean matrix.
pub fn rho_matrix(serving: &[usize], columns: usize) -> Vec<Vec<bool>> {
    serving.iter().map(|&s| (0..columns).map(|j| j == s).collect()).collect()
}

/// Equal-share bandwidth used to price links: `1/I` at the MBS and
/// `1/max(1, N_j)` at ABS `j`, where `N_j` counts users inside its cone.
pub fn equal_share_estimates(scenario: &Scenario, positions: &[Point3], params: &ChannelParams) -> Vec<f64> {
    let geom = params.geometry();
    let mut shares = vec![1.0 / scenario.user_count().max(1) as f64];
    for p in positions {
        let n = scenario.users.iter().filter(|u| in_los_cone(p, &u.position, &geom)).count();
        shares.push(1.0 / n.max(1) as f64);
    }
    shares
}

/// Horizontal MBS-user distance, floored at [`MIN_MBS_DISTANCE`].
pub fn mbs_distance(mbs: &Point2, user: &Point2) -> f64 {
    mbs.dist(user).max(MIN_MBS_DISTANCE)
}

/// Distance from the ground-level MBS to an ABS.
pub fn backhaul_distance(mbs: &Point2, abs: &Point3) -> f64 {
    abs.dist_ground(mbs)
}

pub fn build_bilp(scenario: &Scenario, positions: &[Point3], params: &ChannelParams) -> Result<AssociationProblem> {
    if positions.len() != scenario.abs_count {
        return Err(Error::invalid(format!(
            "{} positions for {} ABSs",
            positions.len(),
            scenario.abs_count
        )));
    }
    let geom = params.geometry();
    let shares = equal_share_estimates(scenario, positions, params);
    let mut capacity = vec![f64::INFINITY];
    for p in positions {
        capacity.push(backhaul_capacity(backhaul_distance(&scenario.mbs_position, p), scenario.abs_count, params)?);
    }
    let cols = positions.len() + 1;
    let mut cost = Vec::with_capacity(scenario.user_count());
    let mut load = Vec::with_capacity(scenario.user_count());
    for (i, u) in scenario.users.iter().enumerate() {
        let mut c = vec![f64::INFINITY; cols];
        let mut w = vec![0.0; cols];
        let d0 = mbs_distance(&scenario.mbs_position, &u.position);
        c[0] = power_coefficient(u.rate_demand, ServingBs::Mbs { distance: d0 }, shares[0], params)?;
        for (j, p) in positions.iter().enumerate() {
            let col = j + 1;
            let cached = scenario.cached(i, col);
            w[col] = if cached { 0.0 } else { u.rate_demand };
            let delay_ok = !u.delay_sensitive || cached;
            if !(in_los_cone(p, &u.position, &geom) && delay_ok && w[col] <= capacity[col]) {
                continue;
            }
            let a = power_coefficient(u.rate_demand, ServingBs::Abs { gain: geom.g0 }, shares[col], params)?;
            let d2 = p.dist_sq_ground(&u.position);
            c[col] = a * d2;
        }
        cost.push(c);
        load.push(w);
    }
    Ok(AssociationProblem { cost, load, capacity })
}

/// Candidate set per user during branching.
type Allowed = Vec<Vec<bool>>;

struct Relaxation {
    bound: f64,
    /// Fractional value per `(user, column)`; zero where not allowed.
    x: Vec<Vec<f64>>,
    /// Reduced cost per `(user, column)`, zero for fixed users.
    reduced: Vec<Vec<f64>>,
}

struct Bilp<'a> {
    p: &'a AssociationProblem,
    scale: f64,
}

impl<'a> Bilp<'a> {
    fn new(p: &'a AssociationProblem) -> Self {
        let mut finite: Vec<f64> = p.cost.iter().flatten().copied().filter(|v| v.is_finite() && *v > 0.0).collect();
        finite.sort_by(f64::total_cmp);
        let scale = finite.get(finite.len() / 2).copied().unwrap_or(1.0);
        Self { p, scale }
    }

    fn relax(&self, allowed: &Allowed) -> Option<Relaxation> {
        let p = self.p;
        let cols = p.columns();
        let mut fixed_cost = 0.0;
        let mut fixed_load = vec![0.0; cols];
        let mut vars: Vec<(usize, usize)> = Vec::new();
        let mut x = vec![vec![0.0; cols]; p.users()];
        for (i, row) in allowed.iter().enumerate() {
            let opts: Vec<usize> = (0..cols).filter(|&j| row[j]).collect();
            match opts.as_slice() {
                [] => return None,
                [j] => {
                    fixed_cost += p.cost[i][*j] / self.scale;
                    fixed_load[*j] += p.load[i][*j];
                    x[i][*j] = 1.0;
                }
                _ => vars.extend(opts.iter().map(|&j| (i, j))),
            }
        }
        for j in 1..cols {
            if fixed_load[j] > p.capacity[j] * (1.0 + CAPACITY_TOL) {
                return None;
            }
        }
        let mut reduced = vec![vec![0.0; cols]; p.users()];
        if vars.is_empty() {
            return Some(Relaxation { bound: fixed_cost, x, reduced });
        }
        let mut lp = LpProblem::new(vars.iter().map(|&(i, j)| p.cost[i][j] / self.scale).collect());
        let mut eq_row = vec![0usize; vars.len()];
        let mut start = 0;
        while start < vars.len() {
            let user = vars[start].0;
            let end = start + vars[start..].iter().take_while(|v| v.0 == user).count();
            let mut row = vec![0.0; vars.len()];
            row[start..end].iter_mut().for_each(|v| *v = 1.0);
            let r = lp.num_eq();
            eq_row[start..end].iter_mut().for_each(|v| *v = r);
            lp.add_eq(row, 1.0);
            start = end;
        }
        let mut le_row = vec![None; cols];
        for j in 1..cols {
            let cap = p.capacity[j];
            let row: Vec<f64> = vars
                .iter()
                .map(|&(i, jj)| if jj == j { p.load[i][j] / cap } else { 0.0 })
                .collect();
            if row.iter().any(|&v| v > 0.0) {
                le_row[j] = Some(lp.num_le());
                lp.add_le(row, 1.0 - fixed_load[j] / cap);
            }
        }
        let sol = solve_lp(&lp);
        match sol.status.kind {
            StatusKind::Optimal => {
                for (k, (&(i, j), v)) in vars.iter().zip(&sol.x).enumerate() {
                    x[i][j] = *v;
                    let mut r = p.cost[i][j] / self.scale - sol.duals_eq.get(eq_row[k]).copied().unwrap_or(0.0);
                    if let Some(row) = le_row[j] {
                        r -= sol.duals_ub.get(row).copied().unwrap_or(0.0) * p.load[i][j] / p.capacity[j];
                    }
                    debug_assert!(*v <= 1e-7 || r.abs() <= 1e-6 * (1.0 + r.abs()), "basic reduced cost {r}");
                    reduced[i][j] = r;
                }
                Some(Relaxation { bound: fixed_cost + sol.objective, x, reduced })
            }
            StatusKind::Infeasible => None,
            other => {
                log::warn!("association LP ended with {other:?}; treating node as unbounded below");
                Some(Relaxation { bound: f64::NEG_INFINITY, x, reduced })
            }
        }
    }
}

/// Lower bound (W) on any completion of a partial assignment; `+inf` when no
/// feasible completion exists.
pub fn lp_bound(problem: &AssociationProblem, fixed: &[Option<usize>]) -> f64 {
    let bilp = Bilp::new(problem);
    let allowed = initial_allowed(problem, fixed);
    match bilp.relax(&allowed) {
        Some(r) => r.bound * bilp.scale,
        None => f64::INFINITY,
    }
}

fn initial_allowed(problem: &AssociationProblem, fixed: &[Option<usize>]) -> Allowed {
    (0..problem.users())
        .map(|i| {
            (0..problem.columns())
                .map(|j| problem.eligible(i, j) && fixed.get(i).copied().flatten().is_none_or(|f| f == j))
                .collect()
        })
        .collect()
}

struct Node {
    bound: f64,
    seq: usize,
    allowed: Allowed,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // max-heap on (-bound, -seq): smallest bound first, then oldest
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then(other.seq.cmp(&self.seq))
    }
}

/// Greedy start: users with the largest saving over the MBS claim capacity
/// first.
fn greedy(problem: &AssociationProblem) -> Vec<usize> {
    let cols = problem.columns();
    let mut order: Vec<usize> = (0..problem.users()).collect();
    let saving = |i: usize| {
        let best = (1..cols).map(|j| problem.cost[i][j]).fold(f64::INFINITY, f64::min);
        problem.cost[i][0] - best
    };
    order.sort_by(|&a, &b| saving(b).total_cmp(&saving(a)).then(a.cmp(&b)));
    let mut used = vec![0.0; cols];
    let mut serving = vec![0; problem.users()];
    for i in order {
        let mut best = 0;
        for j in 1..cols {
            if problem.eligible(i, j)
                && used[j] + problem.load[i][j] <= problem.capacity[j]
                && problem.cost[i][j] < problem.cost[i][best]
            {
                best = j;
            }
        }
        used[best] += problem.load[i][best];
        serving[i] = best;
    }
    serving
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BilpOptions {
    /// Nodes whose bound is within this fraction of the incumbent are pruned.
    pub relative_gap: f64,
    pub node_budget: usize,
}

impl Default for BilpOptions {
    fn default() -> Self {
        Self { relative_gap: DEFAULT_GAP, node_budget: NODE_BUDGET }
    }
}

impl BilpOptions {
    /// Prunes only on bounds that cannot improve the incumbent.
    pub fn exact() -> Self {
        Self { relative_gap: EXACT_GAP, ..Self::default() }
    }
}

/// Rounds a fractional point: integral users keep their column, the rest
/// take the cheapest column that still fits (the MBS always does).
fn round_relaxation(problem: &AssociationProblem, x: &[Vec<f64>], allowed: &Allowed) -> Vec<usize> {
    let cols = problem.columns();
    let mut serving = vec![usize::MAX; x.len()];
    let mut used = vec![0.0; cols];
    for (i, row) in x.iter().enumerate() {
        if let Some(j) = row.iter().position(|&v| v >= 1.0 - INTEGRAL_TOL) {
            serving[i] = j;
            used[j] += problem.load[i][j];
        }
    }
    for i in 0..x.len() {
        if serving[i] != usize::MAX {
            continue;
        }
        let mut best = 0;
        for j in 1..cols {
            if allowed[i][j]
                && used[j] + problem.load[i][j] <= problem.capacity[j]
                && problem.cost[i][j] < problem.cost[i][best]
            {
                best = j;
            }
        }
        used[best] += problem.load[i][best];
        serving[i] = best;
    }
    serving
}

pub fn solve_bilp(problem: &AssociationProblem) -> Result<AssociationResult> {
    solve_bilp_with(problem, &BilpOptions::default())
}

pub fn solve_bilp_with(problem: &AssociationProblem, options: &BilpOptions) -> Result<AssociationResult> {
    problem.validate()?;
    let n = problem.users();
    let all_mbs = vec![0; n];
    let mut inc = all_mbs.clone();
    let mut inc_cost = problem.evaluate(&all_mbs).unwrap_or(f64::INFINITY);
    let g = greedy(problem);
    if let Some(c) = problem.evaluate(&g) {
        if c < inc_cost {
            inc = g;
            inc_cost = c;
        }
    }
    if n == 0 {
        return Ok(AssociationResult { serving: vec![], objective: 0.0, optimal: true, nodes: 0 });
    }

    let bilp = Bilp::new(problem);
    let prune_tol = |inc: f64| options.relative_gap.max(EXACT_GAP) * inc.abs().max(1e-300);
    let mut heap = BinaryHeap::new();
    let mut seq = 0usize;
    let root = initial_allowed(problem, &[]);
    heap.push(Node { bound: f64::NEG_INFINITY, seq, allowed: root });
    let mut nodes = 0usize;
    let mut optimal = true;

    while let Some(node) = heap.pop() {
        let inc_norm = inc_cost / bilp.scale;
        if node.bound >= inc_norm - prune_tol(inc_norm) {
            continue;
        }
        if nodes >= options.node_budget {
            optimal = false;
            break;
        }
        nodes += 1;
        let Some(relax) = bilp.relax(&node.allowed) else {
            continue;
        };
        if relax.bound >= inc_norm - prune_tol(inc_norm) {
            continue;
        }
        let guess = round_relaxation(problem, &relax.x, &node.allowed);
        if let Some(c) = problem.evaluate(&guess) {
            if c < inc_cost {
                inc_cost = c;
                inc = guess;
            }
        }
        // most fractional variable, lowest (user, column) on ties
        let mut branch: Option<(usize, usize, f64)> = None;
        let mut rounded = Vec::with_capacity(n);
        for (i, row) in relax.x.iter().enumerate() {
            let mut pick = None;
            for (j, &v) in row.iter().enumerate() {
                if v >= 1.0 - INTEGRAL_TOL {
                    pick = Some(j);
                }
                if v > INTEGRAL_TOL && v < 1.0 - INTEGRAL_TOL {
                    let dist = (v - 0.5).abs();
                    if branch.is_none_or(|b| dist < b.2) {
                        branch = Some((i, j, dist));
                    }
                }
            }
            rounded.push(pick);
        }
        let bound = relax.bound;
        // a variable whose reduced cost alone closes the gap stays at zero below this node
        let mut allowed = node.allowed;
        let slack = inc_norm - prune_tol(inc_norm) - bound;
        for (i, row) in allowed.iter_mut().enumerate() {
            if row.iter().filter(|&&b| b).count() < 2 {
                continue;
            }
            for j in 0..row.len() {
                if row[j] && relax.x[i][j] <= INTEGRAL_TOL && relax.reduced[i][j] > slack {
                    row[j] = false;
                }
            }
        }
        let node = Node { bound, seq: node.seq, allowed };
        match branch {
            None if rounded.iter().all(Option::is_some) => {
                let serving: Vec<usize> = rounded.into_iter().map(Option::unwrap).collect();
                if let Some(c) = problem.evaluate(&serving) {
                    if c < inc_cost {
                        inc_cost = c;
                        inc = serving;
                    }
                }
            }
            _ => {
                // fall back to the first undecided user if the LP gave no fractional entry
                let (i, j) = match branch {
                    Some((i, j, _)) => (i, j),
                    None => {
                        let i = node.allowed.iter().position(|r| r.iter().filter(|&&b| b).count() > 1);
                        let Some(i) = i else { continue };
                        let j = node.allowed[i].iter().position(|&b| b).unwrap_or(0);
                        (i, j)
                    }
                };
                let mut one = node.allowed.clone();
                one[i].iter_mut().enumerate().for_each(|(k, b)| *b = *b && k == j);
                let mut zero = node.allowed;
                zero[i][j] = false;
                for allowed in [one, zero] {
                    seq += 1;
                    heap.push(Node { bound, seq, allowed });
                }
            }
        }
    }
    log::debug!("association: {nodes} nodes, objective {inc_cost:.6e} W, optimal {optimal}");
    Ok(AssociationResult { serving: inc, objective: inc_cost, optimal, nodes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const INF: f64 = f64::INFINITY;

    fn enumerate(p: &AssociationProblem) -> f64 {
        let (n, cols) = (p.users(), p.columns());
        let mut best = INF;
        let mut s = vec![0usize; n];
        loop {
            if let Some(c) = p.evaluate(&s) {
                best = best.min(c);
            }
            let mut k = 0;
            loop {
                if k == n {
                    return best;
                }
                s[k] += 1;
                if s[k] < cols {
                    break;
                }
                s[k] = 0;
                k += 1;
            }
        }
    }

    #[test]
    fn single_user_mbs_only() {
        let p = AssociationProblem { cost: vec![vec![3.0]], load: vec![vec![0.0]], capacity: vec![INF] };
        let r = solve_bilp_with(&p, &BilpOptions::exact()).unwrap();
        assert_eq!(r.serving, vec![0]);
        assert_eq!(r.objective, 3.0);
        assert!(r.optimal);
    }

    #[test]
    fn binding_capacity_matches_enumeration() {
        // both ABSs are cheap for everyone but hold one user each
        let p = AssociationProblem {
            cost: vec![
                vec![10.0, 1.0, 2.0],
                vec![10.0, 1.5, 1.0],
                vec![12.0, 1.0, 1.2],
                vec![9.0, 2.0, 1.1],
            ],
            load: vec![vec![0.0, 5.0, 5.0]; 4],
            capacity: vec![INF, 5.0, 5.0],
        };
        let r = solve_bilp_with(&p, &BilpOptions::exact()).unwrap();
        assert!((r.objective - enumerate(&p)).abs() < 1e-12);
        assert!(r.optimal);
    }

    #[test]
    fn uncapacitated_takes_row_minima() {
        let p = AssociationProblem {
            cost: vec![vec![5.0, 1.0, INF], vec![2.0, 3.0, 4.0], vec![6.0, INF, 0.5]],
            load: vec![vec![0.0, 1.0, 1.0]; 3],
            capacity: vec![INF, 100.0, 100.0],
        };
        let r = solve_bilp_with(&p, &BilpOptions::exact()).unwrap();
        assert_eq!(r.serving, vec![1, 0, 2]);
        assert!((lp_bound(&p, &[]) - 3.5).abs() < 1e-12);
        assert!((lp_bound(&p, &[Some(0), Some(0), Some(0)]) - 13.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_fixing_gives_infinite_bound() {
        let p = AssociationProblem {
            cost: vec![vec![5.0, 1.0], vec![5.0, 1.0]],
            load: vec![vec![0.0, 1.0]; 2],
            capacity: vec![INF, 1.5],
        };
        assert_eq!(lp_bound(&p, &[Some(1), Some(1)]), INF);
    }

    fn instance() -> impl Strategy<Value = AssociationProblem> {
        (1usize..=8, 1usize..=2).prop_flat_map(|(n, j)| {
            let cols = j + 1;
            (
                prop::collection::vec(prop::collection::vec((0.01f64..10.0, prop::bool::weighted(0.8)), cols), n),
                prop::collection::vec(prop::collection::vec(0.0f64..5.0, cols), n),
                prop::collection::vec(1.0f64..15.0, j),
            )
                .prop_map(|(c, w, cap)| {
                    let cost = c
                        .into_iter()
                        .map(|row| row.into_iter().enumerate().map(|(k, (v, e))| if k == 0 || e { v } else { INF }).collect())
                        .collect();
                    let load = w.into_iter().map(|mut r| { r[0] = 0.0; r }).collect();
                    let mut capacity = vec![INF];
                    capacity.extend(cap);
                    AssociationProblem { cost, load, capacity }
                })
        })
    }

    proptest! {
        #[test]
        fn matches_enumeration(p in instance()) {
            let r = solve_bilp_with(&p, &BilpOptions::exact()).unwrap();
            let e = enumerate(&p);
            prop_assert!((r.objective - e).abs() <= 1e-9 * e.max(1.0));
            prop_assert!(p.evaluate(&r.serving).is_some());
            prop_assert!(r.objective <= p.evaluate(&vec![0; p.users()]).unwrap() + 1e-12);
            prop_assert!(lp_bound(&p, &[]) <= e * (1.0 + 1e-9) + 1e-12);
        }
    }
}
