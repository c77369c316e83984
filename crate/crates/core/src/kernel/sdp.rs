//! Primal-dual path-following interior-point method for small dense SDPs.
//!
//! Problems are stated over one symmetric matrix `Z >= 0` with scalar
//! constraints `<A_t, Z> (<=|=|>=) b_t`. Inequalities get slack variables in
//! an LP block, so the internal standard form is
//!
//! ```text
//! min <C, X> + cl^T xl   s.t.  <A_i, X> + L_i^T xl = b_i,  X >= 0,  xl >= 0
//! ```
//!
//! solved with the HKM search direction and a Mehrotra predictor-corrector
//! from an infeasible starting point. When the main solve fails to converge,
//! a phase-I problem (minimise total constraint violation) decides between
//! infeasible and a genuine iteration-limit/unbounded outcome.

use nalgebra::{DMatrix, DVector};

use super::{SolveStatus, StatusKind};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const MAX_ITERATIONS: usize = 200;

/// Step-to-boundary fraction.
const STEP_FRACTION: f64 = 0.98;
/// Phase-I trace regulariser (keeps its dual strictly feasible).
const PHASE1_REG: f64 = 1e-9;
const DIVERGENCE: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintSense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpConstraint {
    pub a: DMatrix<f64>,
    pub b: f64,
    pub sense: ConstraintSense,
}

/// `min <C, Z>` over symmetric `Z >= 0` subject to the scalar constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub n: usize,
    pub c: DMatrix<f64>,
    pub constraints: Vec<SdpConstraint>,
}

impl SdpProblem {
    /// New problem whose last diagonal entry is pinned to one (the lifted
    /// `[X xi; xi^T 1]` form).
    pub fn new(c: DMatrix<f64>) -> Self {
        let n = c.nrows();
        let mut pin = DMatrix::zeros(n, n);
        if n > 0 {
            pin[(n - 1, n - 1)] = 1.0;
        }
        Self {
            n,
            c,
            constraints: vec![SdpConstraint {
                a: pin,
                b: 1.0,
                sense: ConstraintSense::Eq,
            }],
        }
    }

    pub fn add(&mut self, a: DMatrix<f64>, sense: ConstraintSense, b: f64) -> &mut Self {
        self.constraints.push(SdpConstraint { a, b, sense });
        self
    }

    pub fn add_le(&mut self, a: DMatrix<f64>, b: f64) -> &mut Self {
        self.add(a, ConstraintSense::Le, b)
    }

    pub fn add_eq(&mut self, a: DMatrix<f64>, b: f64) -> &mut Self {
        self.add(a, ConstraintSense::Eq, b)
    }

    pub fn validate(&self) -> Result<(), String> {
        let n = self.n;
        if n == 0 {
            return Err("matrix dimension must be positive".into());
        }
        let sym = |m: &DMatrix<f64>| {
            m.nrows() == n
                && m.ncols() == n
                && (0..n).all(|i| (0..n).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= 1e-12 * (1.0 + m[(i, j)].abs())))
                && m.iter().all(|v| v.is_finite())
        };
        if !sym(&self.c) {
            return Err("objective matrix must be finite, symmetric and n x n".into());
        }
        for (t, con) in self.constraints.iter().enumerate() {
            if !sym(&con.a) || !con.b.is_finite() {
                return Err(format!("constraint {t} is not a finite symmetric n x n matrix"));
            }
        }
        let pinned = self.constraints.iter().any(|con| {
            con.sense == ConstraintSense::Eq
                && con.b == 1.0
                && con
                    .a
                    .iter()
                    .enumerate()
                    .all(|(k, &v)| if k == n * n - 1 { v == 1.0 } else { v == 0.0 })
        });
        if !pinned {
            return Err("no constraint pins Z[n,n] = 1".into());
        }
        Ok(())
    }

    /// Largest violation of any scalar constraint at `z`.
    pub fn max_violation(&self, z: &DMatrix<f64>) -> f64 {
        self.constraints
            .iter()
            .map(|con| {
                let lhs = con.a.dot(z);
                match con.sense {
                    ConstraintSense::Le => (lhs - con.b).max(0.0),
                    ConstraintSense::Ge => (con.b - lhs).max(0.0),
                    ConstraintSense::Eq => (lhs - con.b).abs(),
                }
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub z: DMatrix<f64>,
    pub objective: f64,
    pub dual_objective: f64,
    /// One multiplier per constraint, in problem order.
    pub y: Vec<f64>,
    pub status: SolveStatus,
    /// `(primal, dual)` objective per iteration of the main solve.
    pub trace: Vec<(f64, f64)>,
}

pub fn solve_sdp(problem: &SdpProblem, tol: f64) -> SdpSolution {
    let n = problem.n;
    if let Err(e) = problem.validate() {
        log::debug!("malformed SDP: {e}");
        return failed(n, StatusKind::Infeasible, 0, Vec::new());
    }
    let tol = if tol > 0.0 { tol } else { DEFAULT_TOL };

    let std = StandardForm::from_problem(problem);
    let main = std.solve(tol, MAX_ITERATIONS);
    let (y_orig, _) = std.unscale_dual(&main.y);

    if main.converged {
        let z = main.x.clone();
        let objective = problem.c.dot(&z);
        let dual_objective: f64 = problem.constraints.iter().zip(&y_orig).map(|(c, y)| c.b * y).sum();
        let mut status = SolveStatus::new(StatusKind::Optimal, main.iterations);
        let (rp, rd, gap) = std.original_residuals(&main, problem);
        status.primal_residual = rp;
        status.dual_residual = rd;
        status.complementarity = gap;
        return SdpSolution {
            z,
            objective,
            dual_objective,
            y: y_orig,
            status,
            trace: main.trace,
        };
    }

    // Classify the failure with a phase-I solve.
    let phase1 = std.phase_one();
    let p1 = phase1.solve(tol, MAX_ITERATIONS);
    let violation: f64 = p1.xl[std.p..].iter().sum();
    let b_scale = 1.0 + std.b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let iterations = main.iterations + p1.iterations;
    if violation > 1e2 * tol * b_scale {
        log::debug!("SDP phase I: residual violation {violation:.3e}, infeasible");
        return failed(n, StatusKind::Infeasible, iterations, main.trace);
    }
    let kind = if main.diverged && main.trace.last().is_some_and(|t| t.0 < -DIVERGENCE.sqrt()) {
        StatusKind::Unbounded
    } else {
        StatusKind::MaxIterations
    };
    failed(n, kind, iterations, main.trace)
}

fn failed(n: usize, kind: StatusKind, iterations: usize, trace: Vec<(f64, f64)>) -> SdpSolution {
    SdpSolution {
        z: DMatrix::from_element(n, n, f64::NAN),
        objective: f64::NAN,
        dual_objective: f64::NAN,
        y: Vec::new(),
        status: SolveStatus::new(kind, iterations),
        trace,
    }
}

/// Row-scaled standard form.
struct StandardForm {
    n: usize,
    /// Number of LP-block variables (slacks first, then any phase-I extras).
    p: usize,
    a: Vec<DMatrix<f64>>,
    /// Sparse LP-block coefficients per row: `(column, value)`.
    l: Vec<Vec<(usize, f64)>>,
    b: Vec<f64>,
    c: DMatrix<f64>,
    cl: Vec<f64>,
    row_scale: Vec<f64>,
    cost_scale: f64,
}

struct IpmOutcome {
    x: DMatrix<f64>,
    xl: Vec<f64>,
    y: Vec<f64>,
    s: DMatrix<f64>,
    sl: Vec<f64>,
    iterations: usize,
    converged: bool,
    diverged: bool,
    trace: Vec<(f64, f64)>,
}

impl StandardForm {
    fn from_problem(problem: &SdpProblem) -> Self {
        let n = problem.n;
        let mut a = Vec::new();
        let mut l = Vec::new();
        let mut b = Vec::new();
        let mut row_scale = Vec::new();
        let mut p = 0;
        for con in &problem.constraints {
            let mut lrow = Vec::new();
            match con.sense {
                ConstraintSense::Le => {
                    lrow.push((p, 1.0));
                    p += 1;
                }
                ConstraintSense::Ge => {
                    lrow.push((p, -1.0));
                    p += 1;
                }
                ConstraintSense::Eq => {}
            }
            let norm = con.a.norm().max(1e-300);
            let r = if norm > 0.0 { norm } else { 1.0 };
            a.push(&con.a / r);
            l.push(lrow.into_iter().map(|(k, v)| (k, v / r)).collect());
            b.push(con.b / r);
            row_scale.push(r);
        }
        let cnorm = problem.c.norm();
        let cost_scale = if cnorm > 0.0 { cnorm } else { 1.0 };
        Self {
            n,
            p,
            a,
            l,
            b,
            c: &problem.c / cost_scale,
            cl: vec![0.0; p],
            row_scale,
            cost_scale,
        }
    }

    /// Adds `u_i - v_i` artificials with unit cost; objective becomes the
    /// total violation plus a tiny trace term.
    fn phase_one(&self) -> Self {
        let m = self.b.len();
        let mut l = self.l.clone();
        for (i, row) in l.iter_mut().enumerate() {
            row.push((self.p + 2 * i, 1.0));
            row.push((self.p + 2 * i + 1, -1.0));
        }
        let mut cl = vec![0.0; self.p];
        cl.extend(std::iter::repeat_n(1.0, 2 * m));
        Self {
            n: self.n,
            p: self.p + 2 * m,
            a: self.a.clone(),
            l,
            b: self.b.clone(),
            c: DMatrix::identity(self.n, self.n) * PHASE1_REG,
            cl,
            row_scale: self.row_scale.clone(),
            cost_scale: 1.0,
        }
    }

    fn m(&self) -> usize {
        self.b.len()
    }

    fn apply_a(&self, x: &DMatrix<f64>, xl: &[f64]) -> Vec<f64> {
        self.a
            .iter()
            .zip(&self.l)
            .map(|(ai, li)| ai.dot(x) + li.iter().map(|&(k, v)| v * xl[k]).sum::<f64>())
            .collect()
    }

    fn apply_at(&self, y: &[f64]) -> (DMatrix<f64>, Vec<f64>) {
        let mut m = DMatrix::zeros(self.n, self.n);
        let mut v = vec![0.0; self.p];
        for ((ai, li), &yi) in self.a.iter().zip(&self.l).zip(y) {
            if yi != 0.0 {
                m += ai * yi;
                for &(k, c) in li {
                    v[k] += c * yi;
                }
            }
        }
        (m, v)
    }

    fn unscale_dual(&self, y: &[f64]) -> (Vec<f64>, f64) {
        (
            y.iter()
                .zip(&self.row_scale)
                .map(|(yi, r)| self.cost_scale * yi / r)
                .collect(),
            self.cost_scale,
        )
    }

    fn original_residuals(&self, out: &IpmOutcome, problem: &SdpProblem) -> (f64, f64, f64) {
        let (y, cs) = self.unscale_dual(&out.y);
        let mut rp = 0.0f64;
        let mut bnorm = 0.0f64;
        for (t, con) in problem.constraints.iter().enumerate() {
            let slack: f64 = self.l[t].iter().map(|&(k, v)| v * self.row_scale[t] * out.xl[k]).sum();
            rp += (con.a.dot(&out.x) + slack - con.b).powi(2);
            bnorm += con.b * con.b;
        }
        let rp = rp.sqrt() / (1.0 + bnorm.sqrt());
        let mut dual = problem.c.clone() - &out.s * cs;
        for (con, yi) in problem.constraints.iter().zip(&y) {
            dual -= &con.a * *yi;
        }
        // slack block: 0 - L^T y - sl
        let mut dl = vec![0.0; self.p];
        for (t, li) in self.l.iter().enumerate() {
            for &(k, v) in li {
                dl[k] -= v * self.row_scale[t] * y[t];
            }
        }
        let dl_norm: f64 = dl
            .iter()
            .zip(&out.sl)
            .map(|(d, s)| (d - s * cs).powi(2))
            .sum::<f64>()
            .sqrt();
        let rd = (dual.norm() + dl_norm) / (1.0 + problem.c.norm());
        let pobj = problem.c.dot(&out.x);
        let dobj: f64 = problem.constraints.iter().zip(&y).map(|(c, yi)| c.b * yi).sum();
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        (rp, rd, gap)
    }

    fn solve(&self, tol: f64, max_iter: usize) -> IpmOutcome {
        let n = self.n;
        let m = self.m();
        let p = self.p;
        let dim = (n + p) as f64;

        let b_max = self.b.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let xi = (10f64).max((n as f64).sqrt()).max((n as f64).sqrt() * (1.0 + b_max));
        let eta = (10f64).max((n as f64).sqrt()).max(1.0 + self.c.norm());
        let mut x = DMatrix::identity(n, n) * xi;
        let mut s = DMatrix::identity(n, n) * eta;
        let mut xl = vec![xi; p];
        let mut sl = vec![eta; p];
        let mut y = vec![0.0; m];

        let bnorm = 1.0 + self.b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let cnorm = 1.0 + self.c.norm() + self.cl.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut trace = Vec::new();
        let mut best_rp = f64::INFINITY;
        let mut stall = 0usize;
        // best fully-measured iterate, returned if progress stops in round-off
        let mut best: Option<(f64, usize, DMatrix<f64>, Vec<f64>, Vec<f64>, DMatrix<f64>, Vec<f64>)> = None;
        let mut since_best = 0usize;

        for iter in 0..max_iter {
            let ax = self.apply_a(&x, &xl);
            let rp: Vec<f64> = self.b.iter().zip(&ax).map(|(b, v)| b - v).collect();
            let (aty, atyl) = self.apply_at(&y);
            let rd = &self.c - &aty - &s;
            let rdl: Vec<f64> = (0..p).map(|k| self.cl[k] - atyl[k] - sl[k]).collect();

            let pobj = self.c.dot(&x) + dotv(&self.cl, &xl);
            let dobj = dotv(&self.b, &y);
            trace.push((pobj * self.cost_scale, dobj * self.cost_scale));
            let mu = (x.dot(&s) + dotv(&xl, &sl)) / dim;

            let rp_rel = normv(&rp) / bnorm;
            let rd_rel = (rd.norm() + normv(&rdl)) / cnorm;
            let cs = self.cost_scale;
            let gap_rel = cs * (pobj - dobj).abs() / (1.0 + cs * (pobj.abs() + dobj.abs()));
            if rp_rel <= tol && rd_rel <= tol && gap_rel <= tol {
                return IpmOutcome { x, xl, y, s, sl, iterations: iter, converged: true, diverged: false, trace };
            }
            let merit = rp_rel.max(rd_rel).max(gap_rel);
            if best.as_ref().is_none_or(|b| merit < 0.9 * b.0) {
                best = Some((merit, iter, x.clone(), xl.clone(), y.clone(), s.clone(), sl.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best > 20 {
                    break;
                }
            }
            let big = x.norm().max(normv(&y)).max(normv(&xl));
            if !big.is_finite() || big > DIVERGENCE * (1.0 + xi) {
                return IpmOutcome { x, xl, y, s, sl, iterations: iter, converged: false, diverged: true, trace };
            }
            if rp_rel < 0.5 * best_rp {
                best_rp = rp_rel;
                stall = 0;
            } else {
                stall += 1;
            }
            if iter > 40 && stall > 25 && rp_rel > 1e3 * tol {
                return IpmOutcome { x, xl, y, s, sl, iterations: iter, converged: false, diverged: true, trace };
            }

            let Some(s_inv) = sym_inverse(&s) else {
                break;
            };
            let d: Vec<f64> = (0..p).map(|k| xl[k] / sl[k]).collect();

            // Schur complement M_ij = <A_i, X A_j S^-1> + sum_k L_ik L_jk d_k
            let w: Vec<DMatrix<f64>> = self.a.iter().map(|aj| &x * aj * &s_inv).collect();
            let mut schur = DMatrix::zeros(m, m);
            for i in 0..m {
                for j in i..m {
                    let mut v = trace_prod(&self.a[i], &w[j]);
                    for &(k, a) in &self.l[i] {
                        for &(k2, b) in &self.l[j] {
                            if k == k2 {
                                v += a * b * d[k];
                            }
                        }
                    }
                    schur[(i, j)] = v;
                    schur[(j, i)] = v;
                }
            }
            // mild diagonal regularisation against rank loss near the optimum
            let diag_max = (0..m).map(|i| schur[(i, i)].abs()).fold(0.0, f64::max);
            for i in 0..m {
                schur[(i, i)] += 1e-14 * (1.0 + diag_max);
            }
            let Some(chol) = schur.clone().cholesky() else {
                log::debug!("SDP: Schur complement lost definiteness at iteration {iter}");
                break;
            };

            let xrd = &x * &rd * &s_inv;
            let direction = |sigma_mu: f64, corr: Option<(&DMatrix<f64>, &[f64])>| {
                // rhs = rp - A(sigma_mu S^-1 - X - X Rd S^-1 - Corr) - L(sigma_mu/sl - xl - D rdl - corr_l)
                let mut t = &s_inv * sigma_mu - &x - &xrd;
                let mut tl: Vec<f64> = (0..p).map(|k| sigma_mu / sl[k] - xl[k] - d[k] * rdl[k]).collect();
                if let Some((cm, cl)) = corr {
                    t -= cm;
                    for k in 0..p {
                        tl[k] -= cl[k];
                    }
                }
                let at = self.apply_a(&t, &tl);
                let rhs = DVector::from_iterator(m, rp.iter().zip(&at).map(|(r, a)| r - a));
                let dy = chol.solve(&rhs);
                let dyv: Vec<f64> = dy.iter().copied().collect();
                let (atdy, atdyl) = self.apply_at(&dyv);
                let ds = &rd - &atdy;
                let dsl: Vec<f64> = (0..p).map(|k| rdl[k] - atdyl[k]).collect();
                let mut dx = &s_inv * sigma_mu - &x - &x * &ds * &s_inv;
                let mut dxl: Vec<f64> = (0..p).map(|k| sigma_mu / sl[k] - xl[k] - d[k] * dsl[k]).collect();
                if let Some((cm, cl)) = corr {
                    dx -= cm;
                    for k in 0..p {
                        dxl[k] -= cl[k];
                    }
                }
                let dx = symmetrize(&dx);
                (dx, dxl, dyv, ds, dsl)
            };

            // predictor
            let (dxa, dxla, _, dsa, dsla) = direction(0.0, None);
            let ap = max_step(&x, &dxa).min(max_step_vec(&xl, &dxla)).min(1.0);
            let ad = max_step(&s, &dsa).min(max_step_vec(&sl, &dsla)).min(1.0);
            let mu_aff = ((&x + &dxa * ap).dot(&(&s + &dsa * ad))
                + (0..p).map(|k| (xl[k] + ap * dxla[k]) * (sl[k] + ad * dsla[k])).sum::<f64>())
                / dim;
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

            // corrector
            let corr_m = &dxa * &dsa * &s_inv;
            let corr_l: Vec<f64> = (0..p).map(|k| dxla[k] * dsla[k] / sl[k]).collect();
            let (dx, dxl, dy, ds, dsl) = direction(sigma * mu, Some((&corr_m, &corr_l)));
            let ap = (STEP_FRACTION * max_step(&x, &dx).min(max_step_vec(&xl, &dxl))).min(1.0);
            let ad = (STEP_FRACTION * max_step(&s, &ds).min(max_step_vec(&sl, &dsl))).min(1.0);

            x = symmetrize(&(&x + &dx * ap));
            s = symmetrize(&(&s + &ds * ad));
            for k in 0..p {
                xl[k] += ap * dxl[k];
                sl[k] += ad * dsl[k];
            }
            for (yi, dyi) in y.iter_mut().zip(&dy) {
                *yi += ad * dyi;
            }
        }
        let iterations = trace.len();
        if let Some((merit, _, bx, bxl, by, bs, bsl)) = best {
            if merit <= tol {
                return IpmOutcome { x: bx, xl: bxl, y: by, s: bs, sl: bsl, iterations, converged: true, diverged: false, trace };
            }
        }
        IpmOutcome { x, xl, y, s, sl, iterations, converged: false, diverged: false, trace }
    }
}

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normv(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `tr(A W)` without forming the product.
fn trace_prod(a: &DMatrix<f64>, w: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut t = 0.0;
    for i in 0..n {
        for k in 0..n {
            t += a[(i, k)] * w[(k, i)];
        }
    }
    t
}

fn sym_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    match m.clone().cholesky() {
        Some(c) => Some(symmetrize(&c.inverse())),
        None => {
            let eig = m.clone().symmetric_eigen();
            if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
                return None;
            }
            let inv = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|l| 1.0 / l));
            Some(&eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose())
        }
    }
}

/// Largest `alpha` with `X + alpha dX >= 0` (infinite if any step works).
fn max_step(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    let lmin = match x.clone().cholesky() {
        Some(c) => {
            let l = c.l();
            let Some(linv) = l.try_inverse() else {
                return 0.0;
            };
            let t = symmetrize(&(&linv * dx * linv.transpose()));
            t.symmetric_eigenvalues().min()
        }
        None => return 0.0,
    };
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

fn max_step_vec(x: &[f64], dx: &[f64]) -> f64 {
    x.iter()
        .zip(dx)
        .filter(|(_, &d)| d < 0.0)
        .map(|(v, d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}
