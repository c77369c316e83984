//! Per-ABS placement: a non-convex QCQP in the ABS position, attacked with
//! an SDP relaxation, Gaussian randomization and coordinate descent.
//!
//! Quadratics are stored as `f(xi) = 1/2 xi^T G xi + q^T xi + n`.

use nalgebra::{DMatrix, Matrix3, SymmetricEigen, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::{
    backhaul_budget, backhaul_load_factor, power_coefficient, ChannelParams, ServingBs,
};
use crate::error::Result;
use crate::geometry::{Point2, Point3};
use crate::kernel::{solve_sdp, SdpProblem, StatusKind};
use crate::scenario::Scenario;

pub const FEASIBILITY_TOL: f64 = 1e-6;
pub const DEFAULT_SAMPLES: usize = 100;
const MAX_SWEEPS: usize = 200;
const SWEEP_REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadratic {
    pub g: Matrix3<f64>,
    pub q: Vector3<f64>,
    pub n: f64,
}

impl Quadratic {
    pub fn zero() -> Self {
        Self {
            g: Matrix3::zeros(),
            q: Vector3::zeros(),
            n: 0.0,
        }
    }

    pub fn eval(&self, xi: &Vector3<f64>) -> f64 {
        0.5 * xi.dot(&(self.g * xi)) + self.q.dot(xi) + self.n
    }

    /// `w ((x-px)^2 + (y-py)^2 + sz z^2)`.
    fn weighted_distance(w: f64, p: &Point2, sz: f64) -> Self {
        Self {
            g: Matrix3::from_diagonal(&Vector3::new(2.0 * w, 2.0 * w, 2.0 * w * sz)),
            q: Vector3::new(-2.0 * w * p.x, -2.0 * w * p.y, 0.0),
            n: w * (p.x * p.x + p.y * p.y),
        }
    }

    /// Coefficients `(a, b, c)` of `a t^2 + b t + c` along coordinate `k`.
    fn along(&self, xi: &Vector3<f64>, k: usize) -> (f64, f64, f64) {
        let mut fixed = *xi;
        fixed[k] = 0.0;
        let a = 0.5 * self.g[(k, k)];
        let b = self.q[k] + (0..3).filter(|&l| l != k).map(|l| self.g[(k, l)] * xi[l]).sum::<f64>();
        (a, b, self.eval(&fixed))
    }

    /// The same quadratic in coordinates `xi = s * xi_hat`, divided by `w`.
    fn rescaled(&self, s: f64, w: f64) -> Self {
        Self {
            g: self.g * (s * s / w),
            q: self.q * (s / w),
            n: self.n / w,
        }
    }

    /// `[G/2 q/2; q^T/2 n]` so that `f(xi) = <M, [xi;1][xi;1]^T>`.
    fn lifted(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(4, 4);
        for i in 0..3 {
            for j in 0..3 {
                m[(i, j)] = 0.5 * self.g[(i, j)];
            }
            m[(i, 3)] = 0.5 * self.q[i];
            m[(3, i)] = 0.5 * self.q[i];
        }
        m[(3, 3)] = self.n;
        m
    }
}

/// One ABS's placement problem in physical units (metres, watts).
#[derive(Debug, Clone, PartialEq)]
pub struct QcqpInstance {
    pub abs_index: usize,
    pub users: Vec<usize>,
    /// Required power (W) as a function of position.
    pub objective: Quadratic,
    /// `<= 0` keeps each associated user at or above the minimum elevation.
    pub los: Vec<Quadratic>,
    /// `L |xi - mbs|^2 - D <= 0`.
    pub backhaul: Quadratic,
    pub load_factor: f64,
    pub budget: f64,
    pub z_min: f64,
    pub z_max: f64,
    /// Length scale used to normalise coordinates (region side).
    pub scale: f64,
}

impl QcqpInstance {
    /// Builds the instance from user weights `A_t` (W/m^2) and positions.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        abs_index: usize,
        users: Vec<usize>,
        weighted: &[(Point2, f64)],
        mbs: Point2,
        load_factor: f64,
        budget: f64,
        v: f64,
        z_min: f64,
        z_max: f64,
        scale: f64,
    ) -> Self {
        let mut objective = Quadratic::zero();
        let mut los = Vec::with_capacity(weighted.len());
        for (p, a) in weighted {
            let t = Quadratic::weighted_distance(*a, p, 1.0);
            objective.g += t.g;
            objective.q += t.q;
            objective.n += t.n;
            los.push(Quadratic::weighted_distance(1.0, p, v));
        }
        let mut backhaul = Quadratic::weighted_distance(load_factor, &mbs, 1.0);
        backhaul.n -= budget;
        Self {
            abs_index,
            users,
            objective,
            los,
            backhaul,
            load_factor,
            budget,
            z_min,
            z_max,
            scale,
        }
    }

    fn constraints(&self) -> impl Iterator<Item = &Quadratic> {
        self.los.iter().chain(std::iter::once(&self.backhaul))
    }

    /// Largest constraint violation at `p`, in units of `scale^2` (box
    /// violations in units of `scale`).
    pub fn max_violation(&self, p: &Point3) -> f64 {
        let xi = Vector3::new(p.x, p.y, p.z);
        let s2 = self.scale * self.scale;
        let quad = self.constraints().map(|c| c.eval(&xi) / s2).fold(0.0, f64::max);
        let bx = ((self.z_min - p.z).max(p.z - self.z_max) / self.scale).max(0.0);
        quad.max(bx)
    }

    pub fn objective_at(&self, p: &Point3) -> f64 {
        self.objective.eval(&Vector3::new(p.x, p.y, p.z))
    }

    fn weight(&self) -> f64 {
        let w = self.objective.g.trace() / 6.0;
        if w > 0.0 {
            w
        } else {
            1.0
        }
    }

    /// Dimensionless copy: coordinates divided by `scale`, objective by
    /// `sum A scale^2`, constraints by `scale^2`.
    fn normalized(&self) -> Normalized {
        let s = self.scale;
        let w = self.weight() * s * s;
        Normalized {
            objective: self.objective.rescaled(s, w),
            constraints: self.constraints().map(|c| c.rescaled(s, s * s)).collect(),
            z_lo: self.z_min / s,
            z_hi: self.z_max / s,
        }
    }
}

struct Normalized {
    objective: Quadratic,
    constraints: Vec<Quadratic>,
    z_lo: f64,
    z_hi: f64,
}

impl Normalized {
    fn violation(&self, xi: &Vector3<f64>) -> f64 {
        self.constraints.iter().map(|c| c.eval(xi)).fold(0.0, f64::max)
    }

    fn bounds(&self, k: usize) -> (f64, f64) {
        if k == 2 {
            (self.z_lo, self.z_hi)
        } else {
            (f64::NEG_INFINITY, f64::INFINITY)
        }
    }

    /// Values of coordinate `k` keeping every constraint satisfied.
    fn feasible_set(&self, xi: &Vector3<f64>, k: usize) -> Vec<(f64, f64)> {
        let (lo, hi) = self.bounds(k);
        let mut set = vec![(lo, hi)];
        for c in &self.constraints {
            let (a, b, c0) = c.along(xi, k);
            set = intersect(&set, &sublevel(a, b, c0));
            if set.is_empty() {
                break;
            }
        }
        set
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacementResult {
    pub position: Point3,
    pub feasible: bool,
    /// Required power (W) of the associated users at `position`.
    pub objective: f64,
    pub max_violation: f64,
    /// SDR lower bound on the objective (W), when the relaxation was solved.
    pub lower_bound: Option<f64>,
}

/// QCQP for ABS `abs_index` (0-based) under association `serving` (0 = MBS,
/// `j + 1` = ABS `j`) and bandwidth fractions `beta`.
pub fn build_qcqp(
    scenario: &Scenario,
    params: &ChannelParams,
    serving: &[usize],
    beta: &[f64],
    abs_index: usize,
) -> Result<QcqpInstance> {
    let geom = params.geometry();
    let col = abs_index + 1;
    let mut users = Vec::new();
    let mut weighted = Vec::new();
    let mut load = 0.0;
    for (i, u) in scenario.users.iter().enumerate() {
        if serving[i] != col {
            continue;
        }
        let a = power_coefficient(u.rate_demand, ServingBs::Abs { gain: geom.g0 }, beta[i], params)?;
        users.push(i);
        weighted.push((u.position, a));
        if !scenario.cached(i, col) {
            load += u.rate_demand;
        }
    }
    Ok(QcqpInstance::from_parts(
        abs_index,
        users,
        &weighted,
        scenario.mbs_position,
        backhaul_load_factor(load, scenario.abs_count, params),
        backhaul_budget(params),
        geom.v,
        params.z_min,
        params.z_max,
        scenario.region_side,
    ))
}

/// Output of the semidefinite relaxation.
#[derive(Debug, Clone)]
pub struct SdrSuggestion {
    /// Normalised second-moment block `X*`.
    pub x: Matrix3<f64>,
    /// Normalised first-moment `xi*`.
    pub xi: Vector3<f64>,
    /// Lower bound on the physical objective (W).
    pub lower_bound: f64,
}

/// Solves the lifted SDP relaxation. `None` when the relaxation is infeasible
/// or the solver fails.
pub fn sdr_suggest(instance: &QcqpInstance, tol: f64) -> Option<SdrSuggestion> {
    let nz = instance.normalized();
    let mut sdp = SdpProblem::new(nz.objective.lifted());
    for c in &nz.constraints {
        sdp.add_le(c.lifted(), 0.0);
    }
    // z_lo <= z <= z_hi and (z - z_lo)(z_hi - z) >= 0
    let mut zl = DMatrix::zeros(4, 4);
    zl[(2, 3)] = -0.5;
    zl[(3, 2)] = -0.5;
    sdp.add_le(zl.clone(), -nz.z_lo);
    sdp.add_le(-zl, nz.z_hi);
    let mut rlt = DMatrix::zeros(4, 4);
    rlt[(2, 2)] = 1.0;
    rlt[(2, 3)] = -0.5 * (nz.z_lo + nz.z_hi);
    rlt[(3, 2)] = -0.5 * (nz.z_lo + nz.z_hi);
    sdp.add_le(rlt, -nz.z_lo * nz.z_hi);

    let sol = solve_sdp(&sdp, tol);
    if sol.status.kind != StatusKind::Optimal {
        log::debug!("ABS {}: relaxation status {:?}", instance.abs_index, sol.status.kind);
        return None;
    }
    let z = &sol.z;
    let x = Matrix3::from_fn(|i, j| z[(i, j)]);
    let xi = Vector3::new(z[(0, 3)], z[(1, 3)], z[(2, 3)]);
    let w = instance.weight() * instance.scale * instance.scale;
    // conservative up to the solver's stopping tolerance
    let (p, d) = (sol.objective, sol.dual_objective);
    let bound = p.min(d) - tol * (1.0 + p.abs() + d.abs());
    Some(SdrSuggestion {
        x,
        xi,
        lower_bound: bound * w,
    })
}

/// Draws `samples` points from `N(xi*, X* - xi* xi*^T)` (covariance clipped
/// to PSD) and returns the draw with the smallest objective, in metres.
pub fn gaussian_randomize<R: Rng + ?Sized>(
    suggestion: &SdrSuggestion,
    samples: usize,
    instance: &QcqpInstance,
    rng: &mut R,
) -> Point3 {
    let nz = instance.normalized();
    let cov = suggestion.x - suggestion.xi * suggestion.xi.transpose();
    let cov = (cov + cov.transpose()) * 0.5;
    let eig = SymmetricEigen::new(cov);
    let root = eig.eigenvectors * Matrix3::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    let mut best = suggestion.xi;
    let mut best_val = f64::INFINITY;
    for _ in 0..samples.max(1) {
        let w = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let cand = suggestion.xi + root * w;
        let val = nz.objective.eval(&cand);
        if val < best_val {
            best_val = val;
            best = cand;
        }
    }
    to_point(&best, instance.scale)
}

/// Two-phase coordinate descent from `candidate`; never returns anything worse
/// than a feasible `incumbent`.
pub fn improve(candidate: Point3, instance: &QcqpInstance, incumbent: Option<Point3>) -> PlacementResult {
    let nz = instance.normalized();
    let mut best = descend(&nz, instance, &candidate);
    if let Some(inc) = incumbent.filter(|p| p.is_finite()) {
        let other = descend(&nz, instance, &inc);
        if better(&other, &best) {
            best = other;
        }
        let max_violation = instance.max_violation(&inc);
        let stay = PlacementResult {
            position: inc,
            feasible: max_violation <= FEASIBILITY_TOL,
            objective: instance.objective_at(&inc),
            max_violation,
            lower_bound: None,
        };
        if better(&stay, &best) {
            best = stay;
        }
    }
    best
}

/// Suggest-and-improve pipeline for one ABS.
pub fn place_abs<R: Rng + ?Sized>(
    instance: &QcqpInstance,
    samples: usize,
    rng: &mut R,
    incumbent: Option<Point3>,
) -> PlacementResult {
    if instance.users.is_empty() {
        // nothing to serve: any feasible point is optimal
        let start = incumbent.unwrap_or_else(|| Point3::new(0.0, 0.0, instance.z_min));
        return improve(start, instance, None);
    }
    let Some(sdr) = sdr_suggest(instance, crate::kernel::sdp::DEFAULT_TOL) else {
        let start = incumbent.unwrap_or_else(|| centroid(instance));
        return improve(start, instance, None);
    };
    let random = gaussian_randomize(&sdr, samples, instance, rng);
    let mut best = improve(random, instance, incumbent);
    let from_mean = improve(to_point(&sdr.xi, instance.scale), instance, None);
    if better(&from_mean, &best) {
        best = from_mean;
    }
    log::trace!(
        "ABS {}: bound {:.6e}, objective {:.6e}, violation {:.3e}",
        instance.abs_index,
        sdr.lower_bound,
        best.objective,
        best.max_violation
    );
    best.lower_bound = Some(sdr.lower_bound);
    best
}

fn centroid(instance: &QcqpInstance) -> Point3 {
    // minimiser of the objective ignoring constraints
    let g = instance.objective.g;
    let x = -instance.objective.q[0] / g[(0, 0)];
    let y = -instance.objective.q[1] / g[(1, 1)];
    Point3::new(x, y, instance.z_min)
}

fn better(a: &PlacementResult, b: &PlacementResult) -> bool {
    match (a.feasible, b.feasible) {
        (true, false) => true,
        (false, true) => false,
        (true, true) => a.objective < b.objective,
        (false, false) => a.max_violation < b.max_violation,
    }
}

fn to_point(xi: &Vector3<f64>, s: f64) -> Point3 {
    Point3::new(xi[0] * s, xi[1] * s, xi[2] * s)
}

fn descend(nz: &Normalized, instance: &QcqpInstance, start: &Point3) -> PlacementResult {
    let s = instance.scale;
    let mut xi = Vector3::new(start.x / s, start.y / s, start.z / s);
    xi[2] = xi[2].clamp(nz.z_lo, nz.z_hi);

    // phase 1: drive the maximum violation down
    let mut viol = nz.violation(&xi);
    let mut sweeps = 0;
    while viol > 0.0 && sweeps < MAX_SWEEPS {
        sweeps += 1;
        let before = viol;
        for k in 0..3 {
            let set = nz.feasible_set(&xi, k);
            if let Some(t) = nearest(&set, xi[k]) {
                xi[k] = t;
                break;
            }
            xi[k] = min_max_violation(nz, &xi, k);
        }
        viol = nz.violation(&xi);
        if viol <= 0.0 || before - viol <= 1e-12 * before.max(1e-12) {
            break;
        }
    }

    // phase 2: cyclic minimisation within the per-coordinate feasible set
    if viol <= FEASIBILITY_TOL {
        let mut f = nz.objective.eval(&xi);
        for _ in 0..MAX_SWEEPS {
            let before = f;
            for k in 0..3 {
                let (a, b, _) = nz.objective.along(&xi, k);
                if a <= 0.0 {
                    continue;
                }
                let set = nz.feasible_set(&xi, k);
                if let Some(t) = nearest(&set, -b / (2.0 * a)) {
                    let mut trial = xi;
                    trial[k] = t;
                    if nz.objective.eval(&trial) <= f {
                        xi = trial;
                        f = nz.objective.eval(&xi);
                    }
                }
            }
            if before - f <= SWEEP_REL_TOL * before.abs().max(1e-300) {
                break;
            }
        }
    }

    let position = to_point(&xi, s);
    let max_violation = instance.max_violation(&position);
    PlacementResult {
        position,
        feasible: max_violation <= FEASIBILITY_TOL,
        objective: instance.objective_at(&position),
        max_violation,
        lower_bound: None,
    }
}

/// Minimises `max_c h_c(t)` over coordinate `k` within its bounds. The
/// minimum of a pointwise max of quadratics sits at a bound, a stationary
/// point of one piece, or a crossing of two pieces.
fn min_max_violation(nz: &Normalized, xi: &Vector3<f64>, k: usize) -> f64 {
    let (lo, hi) = nz.bounds(k);
    let pieces: Vec<(f64, f64, f64)> = nz.constraints.iter().map(|c| c.along(xi, k)).collect();
    let phi = |t: f64| pieces.iter().map(|&(a, b, c)| (a * t + b) * t + c).fold(f64::NEG_INFINITY, f64::max);
    let mut cands = vec![xi[k]];
    if lo.is_finite() {
        cands.push(lo);
    }
    if hi.is_finite() {
        cands.push(hi);
    }
    for &(a, b, _) in &pieces {
        if a > 0.0 {
            cands.push(-b / (2.0 * a));
        }
    }
    for (i, p) in pieces.iter().enumerate() {
        for q in &pieces[i + 1..] {
            let (da, db, dc) = (p.0 - q.0, p.1 - q.1, p.2 - q.2);
            if da == 0.0 && db == 0.0 {
                continue;
            }
            for r in roots(da, db, dc) {
                cands.push(r);
            }
        }
    }
    let mut best = xi[k];
    let mut best_val = phi(best);
    for t in cands {
        let t = t.clamp(lo, hi);
        if !t.is_finite() {
            continue;
        }
        let v = phi(t);
        if v < best_val {
            best_val = v;
            best = t;
        }
    }
    best
}

fn roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return vec![];
    }
    if a.abs() <= 1e-14 * scale {
        return if b != 0.0 { vec![-c / b] } else { vec![] };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return vec![];
    }
    let sq = disc.sqrt();
    // numerically stable pair
    let qq = -0.5 * (b + b.signum() * sq);
    if qq == 0.0 {
        return vec![0.0];
    }
    let r1 = qq / a;
    let r2 = c / qq;
    if r1 <= r2 {
        vec![r1, r2]
    } else {
        vec![r2, r1]
    }
}

/// `{ t : a t^2 + b t + c <= 0 }` as sorted disjoint intervals.
fn sublevel(a: f64, b: f64, c: f64) -> Vec<(f64, f64)> {
    const INF: f64 = f64::INFINITY;
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return vec![(-INF, INF)];
    }
    if a.abs() <= 1e-14 * scale {
        if b > 0.0 {
            return vec![(-INF, -c / b)];
        }
        if b < 0.0 {
            return vec![(-c / b, INF)];
        }
        return if c <= 0.0 { vec![(-INF, INF)] } else { vec![] };
    }
    let r = roots(a, b, c);
    match (a > 0.0, r.as_slice()) {
        (true, [r1, r2]) => vec![(*r1, *r2)],
        (true, [r1]) => vec![(*r1, *r1)],
        (true, _) => vec![],
        (false, [r1, r2]) => vec![(-INF, *r1), (*r2, INF)],
        (false, _) => vec![(-INF, INF)],
    }
}

fn intersect(x: &[(f64, f64)], y: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for &(a0, a1) in x {
        for &(b0, b1) in y {
            let lo = a0.max(b0);
            let hi = a1.min(b1);
            if lo <= hi {
                out.push((lo, hi));
            }
        }
    }
    out.sort_by(|p, q| p.0.total_cmp(&q.0));
    out
}

fn nearest(set: &[(f64, f64)], t: f64) -> Option<f64> {
    set.iter()
        .map(|&(lo, hi)| t.clamp(lo, hi))
        .min_by(|p, q| (p - t).abs().total_cmp(&(q - t).abs()))
}
