//! Dense two-phase simplex with Bland's anti-cycling rule.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{SolveStatus, StatusKind};

/// Pivot elements smaller than this are treated as zero.
pub const PIVOT_TOL: f64 = 1e-10;
const OPT_TOL: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 100_000;

/// `min c^T x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  lo <= x <= hi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub cost: Vec<f64>,
    pub a_ub: Vec<Vec<f64>>,
    pub b_ub: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    /// `(lo, hi)` per variable; infinities allowed.
    pub bounds: Vec<(f64, f64)>,
}

impl LpProblem {
    /// Problem with the given cost and `x >= 0` bounds.
    pub fn new(cost: Vec<f64>) -> Self {
        let n = cost.len();
        Self {
            cost,
            a_ub: Vec::new(),
            b_ub: Vec::new(),
            a_eq: Vec::new(),
            b_eq: Vec::new(),
            bounds: vec![(0.0, f64::INFINITY); n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    /// Rows added so far with `add_le`/`add_ge`.
    pub fn num_le(&self) -> usize {
        self.a_ub.len()
    }

    pub fn num_eq(&self) -> usize {
        self.a_eq.len()
    }

    pub fn add_le(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.a_ub.push(row);
        self.b_ub.push(rhs);
        self
    }

    pub fn add_ge(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.a_ub.push(row.into_iter().map(|v| -v).collect());
        self.b_ub.push(-rhs);
        self
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.a_eq.push(row);
        self.b_eq.push(rhs);
        self
    }

    pub fn set_bounds(&mut self, var: usize, lo: f64, hi: f64) -> &mut Self {
        self.bounds[var] = (lo, hi);
        self
    }

    fn check(&self) -> Result<(), String> {
        let n = self.num_vars();
        if self.bounds.len() != n {
            return Err(format!("{} bounds for {n} variables", self.bounds.len()));
        }
        if self.a_ub.len() != self.b_ub.len() || self.a_eq.len() != self.b_eq.len() {
            return Err("row count and rhs length differ".into());
        }
        if let Some(r) = self.a_ub.iter().chain(&self.a_eq).find(|r| r.len() != n) {
            return Err(format!("constraint row of length {} for {n} variables", r.len()));
        }
        if let Some((i, &(lo, hi))) = self.bounds.iter().enumerate().find(|(_, &(lo, hi))| {
            lo.is_nan() || hi.is_nan() || lo == f64::INFINITY || hi == f64::NEG_INFINITY
        }) {
            return Err(format!("variable {i} has invalid bounds ({lo}, {hi})"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    /// Multipliers of the `<=` rows (non-positive at an optimum).
    pub duals_ub: Vec<f64>,
    pub duals_eq: Vec<f64>,
}

impl LpSolution {
    fn failed(kind: StatusKind, n: usize, iterations: usize) -> Self {
        Self {
            x: vec![f64::NAN; n],
            objective: f64::NAN,
            status: SolveStatus::new(kind, iterations),
            duals_ub: Vec::new(),
            duals_eq: Vec::new(),
        }
    }
}

/// How an original variable maps onto standard-form columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// `x = offset + s * col`
    Shifted { col: usize, offset: f64, sign: f64 },
    /// `x = pos - neg`
    Free { pos: usize, neg: usize },
}

pub fn solve_lp(problem: &LpProblem) -> LpSolution {
    let n = problem.num_vars();
    if let Err(e) = problem.check() {
        log::debug!("malformed LP: {e}");
        return LpSolution::failed(StatusKind::Infeasible, n, 0);
    }
    if problem.bounds.iter().any(|&(lo, hi)| lo > hi + FEAS_TOL) {
        return LpSolution::failed(StatusKind::Infeasible, n, 0);
    }

    // Columns of the standard form: mapped variables, then slacks.
    let mut maps = Vec::with_capacity(n);
    let mut ncols = 0usize;
    let mut extra_ub: Vec<(usize, f64)> = Vec::new();
    for &(lo, hi) in &problem.bounds {
        if lo.is_finite() {
            maps.push(VarMap::Shifted { col: ncols, offset: lo, sign: 1.0 });
            if hi.is_finite() {
                extra_ub.push((ncols, hi - lo));
            }
            ncols += 1;
        } else if hi.is_finite() {
            maps.push(VarMap::Shifted { col: ncols, offset: hi, sign: -1.0 });
            ncols += 1;
        } else {
            maps.push(VarMap::Free { pos: ncols, neg: ncols + 1 });
            ncols += 2;
        }
    }
    let nvar_cols = ncols;

    // Rows: (coefficients over var columns, rhs, has_slack, origin)
    #[derive(Clone, Copy)]
    enum Origin {
        Ub(usize),
        Eq(usize),
        Bound,
    }
    let mut rows: Vec<(Vec<f64>, f64, bool, Origin)> = Vec::new();
    let map_row = |coefs: &[f64], rhs: f64| -> (Vec<f64>, f64) {
        let mut r = vec![0.0; nvar_cols];
        let mut b = rhs;
        for (j, &a) in coefs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            match maps[j] {
                VarMap::Shifted { col, offset, sign } => {
                    r[col] += a * sign;
                    b -= a * offset;
                }
                VarMap::Free { pos, neg } => {
                    r[pos] += a;
                    r[neg] -= a;
                }
            }
        }
        (r, b)
    };
    for (i, (row, &rhs)) in problem.a_ub.iter().zip(&problem.b_ub).enumerate() {
        let (r, b) = map_row(row, rhs);
        rows.push((r, b, true, Origin::Ub(i)));
    }
    for (i, (row, &rhs)) in problem.a_eq.iter().zip(&problem.b_eq).enumerate() {
        let (r, b) = map_row(row, rhs);
        rows.push((r, b, false, Origin::Eq(i)));
    }
    for &(col, ub) in &extra_ub {
        let mut r = vec![0.0; nvar_cols];
        r[col] = 1.0;
        rows.push((r, ub, true, Origin::Bound));
    }

    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.2).count();
    let art_start = nvar_cols + n_slack;
    let total = art_start + m;

    // Standard-form matrix (kept for dual recovery) and tableau.
    let mut std_a = DMatrix::<f64>::zeros(m, art_start);
    let mut std_b = DVector::<f64>::zeros(m);
    let mut row_sign = vec![1.0; m];
    let mut slack_col = vec![usize::MAX; m];
    let mut next_slack = nvar_cols;
    for (i, (r, b, has_slack, _)) in rows.iter().enumerate() {
        for (j, &v) in r.iter().enumerate() {
            std_a[(i, j)] = v;
        }
        if *has_slack {
            std_a[(i, next_slack)] = 1.0;
            slack_col[i] = next_slack;
            next_slack += 1;
        }
        std_b[i] = *b;
        if *b < 0.0 {
            row_sign[i] = -1.0;
        }
    }

    let mut t = Tableau::new(m, total);
    let mut basis = vec![0usize; m];
    for i in 0..m {
        let s = row_sign[i];
        for j in 0..art_start {
            t.set(i, j, s * std_a[(i, j)]);
        }
        t.set_rhs(i, s * std_b[i]);
        // a slack with +1 after sign normalisation is already a unit column
        if slack_col[i] != usize::MAX && s > 0.0 {
            basis[i] = slack_col[i];
        } else {
            t.set(i, art_start + i, 1.0);
            basis[i] = art_start + i;
        }
    }

    let mut iterations = 0usize;

    // Phase I: minimise the sum of artificials in the basis.
    let mut phase1_cost = vec![0.0; total];
    for (i, &b) in basis.iter().enumerate() {
        if b >= art_start {
            phase1_cost[art_start + i] = 1.0;
        }
    }
    let uses_artificials = basis.iter().any(|&b| b >= art_start);
    if uses_artificials {
        match t.optimize(&mut basis, &phase1_cost, total, &mut iterations) {
            PivotOutcome::Optimal => {}
            PivotOutcome::Unbounded => unreachable!("phase I objective is bounded below"),
            PivotOutcome::IterationLimit => {
                return LpSolution::failed(StatusKind::MaxIterations, n, iterations)
            }
        }
        let infeas: f64 = basis
            .iter()
            .enumerate()
            .filter(|(_, &b)| b >= art_start)
            .map(|(i, _)| t.rhs(i))
            .sum();
        let scale = 1.0 + std_b.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if infeas > FEAS_TOL * scale {
            return LpSolution::failed(StatusKind::Infeasible, n, iterations);
        }
        // Drive remaining (zero-level) artificials out; drop redundant rows.
        let mut i = 0;
        while i < t.rows {
            if basis[i] >= art_start {
                let col = (0..art_start).find(|&j| t.get(i, j).abs() > PIVOT_TOL);
                match col {
                    Some(j) => {
                        t.pivot(i, j);
                        basis[i] = j;
                        iterations += 1;
                        i += 1;
                    }
                    None => {
                        t.remove_row(i);
                        basis.remove(i);
                        row_sign.remove(i);
                        rows.remove(i);
                        std_a = std_a.remove_row(i);
                    }
                }
            } else {
                i += 1;
            }
        }
    }

    // Phase II on the real cost; artificial columns may not re-enter.
    let mut cost2 = vec![0.0; total];
    for (j, &c) in problem.cost.iter().enumerate() {
        match maps[j] {
            VarMap::Shifted { col, sign, .. } => cost2[col] += c * sign,
            VarMap::Free { pos, neg } => {
                cost2[pos] += c;
                cost2[neg] -= c;
            }
        }
    }
    match t.optimize(&mut basis, &cost2, art_start, &mut iterations) {
        PivotOutcome::Optimal => {}
        PivotOutcome::Unbounded => return LpSolution::failed(StatusKind::Unbounded, n, iterations),
        PivotOutcome::IterationLimit => {
            return LpSolution::failed(StatusKind::MaxIterations, n, iterations)
        }
    }

    let mut col_value = vec![0.0; art_start];
    for (i, &b) in basis.iter().enumerate() {
        if b < art_start {
            col_value[b] = t.rhs(i).max(0.0);
        }
    }
    let x: Vec<f64> = maps
        .iter()
        .map(|m| match *m {
            VarMap::Shifted { col, offset, sign } => offset + sign * col_value[col],
            VarMap::Free { pos, neg } => col_value[pos] - col_value[neg],
        })
        .collect();
    let objective: f64 = problem.cost.iter().zip(&x).map(|(c, v)| c * v).sum();

    // Duals from B^T y = c_B on the remaining rows.
    let mr = basis.len();
    let mut bmat = DMatrix::<f64>::zeros(mr, mr);
    let mut cb = DVector::<f64>::zeros(mr);
    for (k, &col) in basis.iter().enumerate() {
        for i in 0..mr {
            bmat[(i, k)] = std_a[(i, col)];
        }
        cb[k] = cost2[col];
    }
    let y = bmat
        .transpose()
        .lu()
        .solve(&cb)
        .unwrap_or_else(|| DVector::zeros(mr));
    let mut duals_ub = vec![0.0; problem.b_ub.len()];
    let mut duals_eq = vec![0.0; problem.b_eq.len()];
    for (k, row) in rows.iter().enumerate() {
        match row.3 {
            Origin::Ub(i) => duals_ub[i] = y[k],
            Origin::Eq(i) => duals_eq[i] = y[k],
            Origin::Bound => {}
        }
    }

    let primal_residual = primal_violation(problem, &x);
    let complementarity = duals_ub
        .iter()
        .zip(problem.a_ub.iter().zip(&problem.b_ub))
        .map(|(y, (row, b))| (y * (b - dot(row, &x))).abs())
        .fold(0.0, f64::max);
    let mut status = SolveStatus::new(StatusKind::Optimal, iterations);
    status.primal_residual = primal_residual;
    status.complementarity = complementarity;
    LpSolution {
        x,
        objective,
        status,
        duals_ub,
        duals_eq,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Largest violation of any row or bound at `x`.
pub fn primal_violation(problem: &LpProblem, x: &[f64]) -> f64 {
    let ub = problem
        .a_ub
        .iter()
        .zip(&problem.b_ub)
        .map(|(r, b)| (dot(r, x) - b).max(0.0));
    let eq = problem
        .a_eq
        .iter()
        .zip(&problem.b_eq)
        .map(|(r, b)| (dot(r, x) - b).abs());
    let bd = problem
        .bounds
        .iter()
        .zip(x)
        .map(|(&(lo, hi), &v)| (lo - v).max(v - hi).max(0.0));
    ub.chain(eq).chain(bd).fold(0.0, f64::max)
}

enum PivotOutcome {
    Optimal,
    Unbounded,
    IterationLimit,
}

struct Tableau {
    rows: usize,
    cols: usize,
    /// Row-major, `cols + 1` entries per row; the last one is the rhs.
    data: Vec<f64>,
}

impl Tableau {
    fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * (cols + 1)],
        }
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * (self.cols + 1) + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * (self.cols + 1) + j] = v;
    }

    #[inline]
    fn rhs(&self, i: usize) -> f64 {
        self.get(i, self.cols)
    }

    fn set_rhs(&mut self, i: usize, v: f64) {
        let c = self.cols;
        self.set(i, c, v);
    }

    fn remove_row(&mut self, i: usize) {
        let w = self.cols + 1;
        self.data.drain(i * w..(i + 1) * w);
        self.rows -= 1;
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.cols + 1;
        let p = self.get(r, c);
        for j in 0..w {
            self.data[r * w + j] /= p;
        }
        let (before, rest) = self.data.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_mut(w).chain(after.chunks_mut(w)) {
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
    }

    /// Primal simplex from a feasible basis. Only columns below `allowed`
    /// may enter.
    fn optimize(
        &mut self,
        basis: &mut [usize],
        cost: &[f64],
        allowed: usize,
        iterations: &mut usize,
    ) -> PivotOutcome {
        let mut is_basic = vec![false; self.cols];
        for &b in basis.iter() {
            is_basic[b] = true;
        }
        loop {
            if *iterations >= MAX_PIVOTS {
                return PivotOutcome::IterationLimit;
            }
            // Bland: the lowest-index improving column enters.
            let mut entering = None;
            for j in 0..allowed {
                if is_basic[j] {
                    continue;
                }
                let mut reduced = cost[j];
                for (i, &b) in basis.iter().enumerate() {
                    let a = self.get(i, j);
                    if a != 0.0 {
                        reduced -= cost[b] * a;
                    }
                }
                if reduced < -OPT_TOL {
                    entering = Some(j);
                    break;
                }
            }
            let Some(c) = entering else {
                return PivotOutcome::Optimal;
            };
            // Ratio test; ties go to the lowest basic index.
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let a = self.get(i, c);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i) / a;
                    match leave {
                        None => leave = Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-12 || (ratio <= lr + 1e-12 && basis[i] < basis[li]) {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            let Some((r, _)) = leave else {
                return PivotOutcome::Unbounded;
            };
            self.pivot(r, c);
            is_basic[basis[r]] = false;
            is_basic[c] = true;
            basis[r] = c;
            *iterations += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn single_lower_bound() {
        let mut lp = LpProblem::new(vec![1.0]);
        lp.set_bounds(0, f64::NEG_INFINITY, f64::INFINITY);
        lp.add_ge(vec![1.0], 3.0);
        let s = solve_lp(&lp);
        assert!(s.status.is_optimal());
        assert_relative_eq!(s.x[0], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn textbook_maximisation() {
        let mut lp = LpProblem::new(vec![-1.0, -1.0]);
        lp.add_le(vec![1.0, 1.0], 1.0);
        let s = solve_lp(&lp);
        assert!(s.status.is_optimal());
        assert_relative_eq!(s.objective, -1.0, epsilon = 1e-12);
        assert!(s.duals_ub[0] <= 1e-12);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let mut lp = LpProblem::new(vec![1.0]);
        lp.add_le(vec![1.0], -1.0);
        assert_eq!(solve_lp(&lp).status.kind, StatusKind::Infeasible);

        let mut lp = LpProblem::new(vec![-1.0, 0.0]);
        lp.add_le(vec![-1.0, 1.0], 1.0);
        assert_eq!(solve_lp(&lp).status.kind, StatusKind::Unbounded);
    }

    #[test]
    fn equality_with_redundant_row() {
        let mut lp = LpProblem::new(vec![1.0, 2.0]);
        lp.add_eq(vec![1.0, 1.0], 2.0);
        lp.add_eq(vec![2.0, 2.0], 4.0);
        let s = solve_lp(&lp);
        assert!(s.status.is_optimal());
        assert_relative_eq!(s.objective, 2.0, epsilon = 1e-12);
        assert_relative_eq!(s.x[0], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn boxed_and_negative_bounds() {
        // min -x + y, -2 <= x <= 3, y in (-inf, -1], x + y >= -10
        let mut lp = LpProblem::new(vec![-1.0, 1.0]);
        lp.set_bounds(0, -2.0, 3.0);
        lp.set_bounds(1, f64::NEG_INFINITY, -1.0);
        lp.add_ge(vec![1.0, 1.0], -10.0);
        let s = solve_lp(&lp);
        assert!(s.status.is_optimal());
        assert_relative_eq!(s.x[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(s.x[1], -13.0, epsilon = 1e-12);
    }

    #[test]
    fn malformed_is_not_optimal() {
        let mut lp = LpProblem::new(vec![1.0, 1.0]);
        lp.add_le(vec![1.0], 1.0);
        assert!(!solve_lp(&lp).status.is_optimal());
    }

    #[test]
    fn deterministic() {
        let mut lp = LpProblem::new(vec![-3.0, -2.0, -4.0]);
        lp.add_le(vec![1.0, 1.0, 2.0], 4.0);
        lp.add_le(vec![2.0, 0.0, 3.0], 5.0);
        lp.add_le(vec![2.0, 1.0, 3.0], 7.0);
        let a = solve_lp(&lp);
        let b = solve_lp(&lp);
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
        assert_relative_eq!(a.objective, -10.5, epsilon = 1e-10);
    }
}
