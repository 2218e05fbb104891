//! Dense convex quadratic programming.
//!
//! Solves problems of the form
//!
//! ```text
//!     minimize     1/2 x' Q x + c' x
//!     subject to   Aeq x  = beq
//!                  Ain x <= bin
//!                  lb <= x <= ub
//! ```
//!
//! with the dual active-set method of Goldfarb and Idnani. The method starts
//! from the unconstrained minimizer and adds violated constraints one at a
//! time while keeping the iterate dual feasible, so the first primal feasible
//! iterate is optimal. The factorization works on an `n x n` matrix only,
//! which keeps the cost per iteration at `O(m n + n^2)` even for problems with
//! thousands of inequality rows.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A dense QP. Bounds may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
}

impl QpProblem {
    /// Unconstrained problem with infinite bounds.
    pub fn new(q: DMatrix<f64>, c: DVector<f64>) -> Self {
        let n = c.len();
        Self {
            q,
            c,
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            a_in: DMatrix::zeros(0, n),
            b_in: DVector::zeros(0),
            lb: DVector::from_element(n, f64::NEG_INFINITY),
            ub: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn with_equality(mut self, a_eq: DMatrix<f64>, b_eq: DVector<f64>) -> Self {
        self.a_eq = a_eq;
        self.b_eq = b_eq;
        self
    }

    pub fn with_inequality(mut self, a_in: DMatrix<f64>, b_in: DVector<f64>) -> Self {
        self.a_in = a_in;
        self.b_in = b_in;
        self
    }

    pub fn with_bounds(mut self, lb: DVector<f64>, ub: DVector<f64>) -> Self {
        self.lb = lb;
        self.ub = ub;
        self
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        let bad = |msg: String| Err(Error::InvalidProblem(msg));
        if self.q.shape() != (n, n) {
            return bad(format!("Q is {:?}, expected {n}x{n}", self.q.shape()));
        }
        if self.a_eq.ncols() != n || self.a_eq.nrows() != self.b_eq.len() {
            return bad(format!(
                "Aeq is {:?} with {} rhs entries",
                self.a_eq.shape(),
                self.b_eq.len()
            ));
        }
        if self.a_in.ncols() != n || self.a_in.nrows() != self.b_in.len() {
            return bad(format!(
                "Ain is {:?} with {} rhs entries",
                self.a_in.shape(),
                self.b_in.len()
            ));
        }
        if self.lb.len() != n || self.ub.len() != n {
            return bad("bound vectors must have length n".into());
        }
        let finite = |m: &[f64]| m.iter().all(|v| v.is_finite());
        if !finite(self.q.as_slice())
            || !finite(self.c.as_slice())
            || !finite(self.a_eq.as_slice())
            || !finite(self.b_eq.as_slice())
            || !finite(self.a_in.as_slice())
            || !finite(self.b_in.as_slice())
        {
            return bad("non-finite entry in problem data".into());
        }
        if self.lb.iter().chain(self.ub.iter()).any(|v| v.is_nan()) {
            return bad("NaN bound".into());
        }
        let scale = self.q.amax().max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in (i + 1)..n {
                if (self.q[(i, j)] - self.q[(j, i)]).abs() > 1e-12 * scale {
                    return bad(format!("Q is not symmetric at ({i}, {j})"));
                }
            }
        }
        for i in 0..n {
            if self.lb[i] > self.ub[i] {
                return bad(format!("lb[{i}] > ub[{i}]"));
            }
        }
        Ok(())
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.q * x)) + self.c.dot(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub max_iterations: usize,
    /// Added to the diagonal of `Q` before factorization.
    pub regularization: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol_primal: 1e-6,
            tol_dual: 1e-6,
            max_iterations: 4000,
            regularization: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum QpStatus {
    Optimal,
    MaxIterations,
    Infeasible,
}

/// Solver output. Multipliers follow the sign convention
/// `Qx + c + Aeq' nu + Ain' lambda - mu_lb + mu_ub = 0` with
/// `lambda, mu_lb, mu_ub >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub status: QpStatus,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub eq_multipliers: DVector<f64>,
    pub ineq_multipliers: DVector<f64>,
    pub lower_multipliers: DVector<f64>,
    pub upper_multipliers: DVector<f64>,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Row {
    Eq(usize),
    Ineq(usize),
    Lower(usize),
    Upper(usize),
}

/// All constraints rewritten as `n' x >= b`, equalities first.
struct Constraints {
    n: usize,
    normals: Vec<f64>,
    rhs: Vec<f64>,
    norms: Vec<f64>,
    rows: Vec<Row>,
    n_eq: usize,
}

impl Constraints {
    fn from_problem(p: &QpProblem) -> Self {
        let n = p.dim();
        let mut this = Constraints {
            n,
            normals: Vec::new(),
            rhs: Vec::new(),
            norms: Vec::new(),
            rows: Vec::new(),
            n_eq: p.a_eq.nrows(),
        };
        let mut row = vec![0.0; n];
        for i in 0..p.a_eq.nrows() {
            for (j, r) in row.iter_mut().enumerate() {
                *r = p.a_eq[(i, j)];
            }
            this.push(&row, p.b_eq[i], Row::Eq(i));
        }
        for i in 0..p.a_in.nrows() {
            for (j, r) in row.iter_mut().enumerate() {
                *r = -p.a_in[(i, j)];
            }
            this.push(&row, -p.b_in[i], Row::Ineq(i));
        }
        for i in 0..n {
            row.iter_mut().for_each(|r| *r = 0.0);
            if p.lb[i].is_finite() {
                row[i] = 1.0;
                this.push(&row, p.lb[i], Row::Lower(i));
            }
            if p.ub[i].is_finite() {
                row[i] = -1.0;
                this.push(&row, -p.ub[i], Row::Upper(i));
            }
        }
        this
    }

    fn push(&mut self, normal: &[f64], rhs: f64, row: Row) {
        let norm = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.normals.extend_from_slice(normal);
        self.rhs.push(rhs);
        self.norms.push(norm);
        self.rows.push(row);
    }

    fn len(&self) -> usize {
        self.rhs.len()
    }

    fn normal(&self, k: usize) -> &[f64] {
        &self.normals[k * self.n..(k + 1) * self.n]
    }

    fn slack(&self, k: usize, x: &DVector<f64>) -> f64 {
        dot(self.normal(k), x.as_slice()) - self.rhs[k]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Givens rotation that maps `(a, b)` onto `(hypot(a, b), 0)`.
fn givens(a: f64, b: f64) -> (f64, f64, f64) {
    let h = a.hypot(b);
    (a / h, b / h, h)
}

/// Working set of the dual method. `j` satisfies `J J' = G^-1` and the first
/// `q` columns of `J' N_active` equal the upper triangular `r`.
struct ActiveSet {
    n: usize,
    j: DMatrix<f64>,
    r: DMatrix<f64>,
    active: Vec<usize>,
    /// Sign applied to each active row (equalities may be flipped).
    sign: Vec<f64>,
    u: Vec<f64>,
}

impl ActiveSet {
    fn q(&self) -> usize {
        self.active.len()
    }

    fn add(&mut self, d: &mut [f64], k: usize, sign: f64, multiplier: f64) {
        let n = self.n;
        let q = self.q();
        for i in (q + 1..n).rev() {
            if d[i] == 0.0 {
                continue;
            }
            let (c, s, h) = givens(d[i - 1], d[i]);
            d[i - 1] = h;
            d[i] = 0.0;
            rotate_columns(&mut self.j, i - 1, i, c, s);
        }
        for i in 0..=q {
            self.r[(i, q)] = d[i];
        }
        self.active.push(k);
        self.sign.push(sign);
        self.u.push(multiplier);
    }

    fn drop(&mut self, l: usize) {
        let q = self.q();
        for col in l..q - 1 {
            for i in 0..=col + 1 {
                self.r[(i, col)] = self.r[(i, col + 1)];
            }
        }
        for i in 0..self.n {
            self.r[(i, q - 1)] = 0.0;
        }
        for jj in l..q - 1 {
            let b = self.r[(jj + 1, jj)];
            if b == 0.0 {
                continue;
            }
            let (c, s, h) = givens(self.r[(jj, jj)], b);
            self.r[(jj, jj)] = h;
            self.r[(jj + 1, jj)] = 0.0;
            for col in jj + 1..q - 1 {
                let (x, y) = (self.r[(jj, col)], self.r[(jj + 1, col)]);
                self.r[(jj, col)] = c * x + s * y;
                self.r[(jj + 1, col)] = -s * x + c * y;
            }
            rotate_columns(&mut self.j, jj, jj + 1, c, s);
        }
        self.active.remove(l);
        self.sign.remove(l);
        self.u.remove(l);
    }

    /// Solves `R r = d[..q]` by back substitution.
    fn dual_direction(&self, d: &[f64]) -> Vec<f64> {
        let q = self.q();
        let mut r = d[..q].to_vec();
        for i in (0..q).rev() {
            let mut acc = r[i];
            for k in i + 1..q {
                acc -= self.r[(i, k)] * r[k];
            }
            r[i] = acc / self.r[(i, i)];
        }
        r
    }
}

fn rotate_columns(m: &mut DMatrix<f64>, a: usize, b: usize, c: f64, s: f64) {
    for k in 0..m.nrows() {
        let (x, y) = (m[(k, a)], m[(k, b)]);
        m[(k, a)] = c * x + s * y;
        m[(k, b)] = -s * x + c * y;
    }
}

enum Outcome {
    Converged,
    Infeasible,
    MaxIterations,
}

/// Solves `problem`. Returns an error only for malformed input; numerical
/// outcomes are reported through [`QpSolution::status`].
pub fn solve(problem: &QpProblem, settings: &SolverSettings) -> Result<QpSolution> {
    problem.validate()?;
    let n = problem.dim();
    let cons = Constraints::from_problem(problem);

    let mut g = problem.q.clone();
    for i in 0..n {
        g[(i, i)] += settings.regularization;
    }
    let chol = g.clone().cholesky().ok_or_else(|| {
        Error::InvalidProblem("Q + rho*I is not positive definite".into())
    })?;
    let l_inv = chol
        .l()
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::InvalidProblem("singular Cholesky factor".into()))?;

    let mut ws = ActiveSet {
        n,
        j: l_inv.transpose(),
        r: DMatrix::zeros(n, n),
        active: Vec::new(),
        sign: Vec::new(),
        u: Vec::new(),
    };
    let mut x = -chol.solve(&problem.c);
    let mut is_active = vec![false; cons.len()];
    let mut iterations = 0usize;
    let mut next_eq = 0usize;
    let feas_tol = 1e-11;

    let outcome = 'outer: loop {
        // Pick the next constraint to add: equalities in order, then the most
        // violated inequality (slack normalized by the row norm).
        let p = if next_eq < cons.n_eq {
            next_eq += 1;
            next_eq - 1
        } else {
            let mut worst = -feas_tol;
            let mut pick = None;
            for k in cons.n_eq..cons.len() {
                if is_active[k] || cons.norms[k] == 0.0 {
                    continue;
                }
                let s = cons.slack(k, &x) / cons.norms[k];
                if s < worst {
                    worst = s;
                    pick = Some(k);
                }
            }
            match pick {
                Some(k) => k,
                None => break Outcome::Converged,
            }
        };

        let is_eq = matches!(cons.rows[p], Row::Eq(_));
        let mut sign = 1.0;
        if is_eq && cons.slack(p, &x) > 0.0 {
            sign = -1.0;
        }
        let np: Vec<f64> = cons.normal(p).iter().map(|v| sign * v).collect();
        let bp = sign * cons.rhs[p];
        let mut u_plus = 0.0;

        loop {
            iterations += 1;
            if iterations > settings.max_iterations {
                break 'outer Outcome::MaxIterations;
            }
            let q = ws.q();
            let mut d = vec![0.0; n];
            for (i, di) in d.iter_mut().enumerate() {
                *di = dot(ws.j.column(i).as_slice(), &np);
            }
            let mut z = DVector::zeros(n);
            for i in q..n {
                z.axpy(d[i], &ws.j.column(i), 1.0);
            }
            let r = ws.dual_direction(&d);

            // Partial step: largest step keeping active inequality
            // multipliers nonnegative.
            let mut t1 = f64::INFINITY;
            let mut drop_idx = None;
            for k in 0..q {
                if matches!(cons.rows[ws.active[k]], Row::Eq(_)) {
                    continue;
                }
                if r[k] > 1e-14 {
                    let ratio = ws.u[k] / r[k];
                    if ratio < t1 {
                        t1 = ratio;
                        drop_idx = Some(k);
                    }
                }
            }

            // Full step: makes constraint p active.
            let zn = dot(z.as_slice(), &np);
            let dn: f64 = d.iter().map(|v| v * v).sum();
            let s = dot(&np, x.as_slice()) - bp;
            let t2 = if zn > 1e-12 * dn.max(f64::MIN_POSITIVE) {
                (-s / zn).max(0.0)
            } else {
                f64::INFINITY
            };

            let t = t1.min(t2);
            if !t.is_finite() {
                break 'outer Outcome::Infeasible;
            }
            for k in 0..q {
                ws.u[k] -= t * r[k];
            }
            u_plus += t;

            if t2.is_infinite() {
                // Dual step only.
                let l = drop_idx.expect("finite partial step has a blocking constraint");
                is_active[ws.active[l]] = false;
                ws.drop(l);
                continue;
            }
            x.axpy(t, &z, 1.0);
            if t2 <= t1 {
                ws.add(&mut d, p, sign, u_plus);
                is_active[p] = true;
                break;
            }
            let l = drop_idx.expect("partial step has a blocking constraint");
            is_active[ws.active[l]] = false;
            ws.drop(l);
        }
    };

    // Multipliers in the documented convention.
    let mut nu = DVector::zeros(problem.a_eq.nrows());
    let mut lambda = DVector::zeros(problem.a_in.nrows());
    let mut mu_lb = DVector::zeros(n);
    let mut mu_ub = DVector::zeros(n);
    let mut stationarity = &problem.q * &x + &problem.c;
    for (pos, &k) in ws.active.iter().enumerate() {
        let u = ws.u[pos] * ws.sign[pos];
        let normal = cons.normal(k);
        for (i, v) in normal.iter().enumerate() {
            stationarity[i] -= u * v;
        }
        match cons.rows[k] {
            Row::Eq(i) => nu[i] = -u,
            Row::Ineq(i) => lambda[i] = u,
            Row::Lower(i) => mu_lb[i] = u,
            Row::Upper(i) => mu_ub[i] = u,
        }
    }
    let dual_residual = stationarity.amax();
    let primal_residual = primal_residual(problem, &x);

    let status = match outcome {
        Outcome::Infeasible => QpStatus::Infeasible,
        Outcome::MaxIterations => QpStatus::MaxIterations,
        Outcome::Converged => {
            if primal_residual <= settings.tol_primal && dual_residual <= settings.tol_dual {
                QpStatus::Optimal
            } else {
                QpStatus::MaxIterations
            }
        }
    };

    Ok(QpSolution {
        x,
        status,
        primal_residual,
        dual_residual,
        iterations,
        eq_multipliers: nu,
        ineq_multipliers: lambda,
        lower_multipliers: mu_lb,
        upper_multipliers: mu_ub,
    })
}

/// Largest violation of any constraint row or bound at `x`.
pub fn primal_residual(problem: &QpProblem, x: &DVector<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    if problem.a_eq.nrows() > 0 {
        worst = worst.max((&problem.a_eq * x - &problem.b_eq).amax());
    }
    if problem.a_in.nrows() > 0 {
        let viol = &problem.a_in * x - &problem.b_in;
        worst = worst.max(viol.max().max(0.0));
    }
    for i in 0..x.len() {
        worst = worst.max(problem.lb[i] - x[i]).max(x[i] - problem.ub[i]);
    }
    worst
}
