//! Test-only oracles. Nothing here calls into the code paths it checks.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random strictly convex QP with a known strictly feasible point.
pub struct RandomQp {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
}

pub fn random_qp(seed: u64, n: usize, n_eq: usize, n_in: usize) -> RandomQp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = |r: usize, c: usize| {
        DMatrix::<f64>::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    };
    let m = gauss(n, n);
    let q = m.transpose() * &m + DMatrix::identity(n, n) * 0.1;
    let x0 = gauss(n, 1).column(0).into_owned();
    let a_eq = gauss(n_eq, n);
    let b_eq = &a_eq * &x0;
    let a_in = gauss(n_in, n);
    let slack = gauss(n_in, 1).column(0).map(|v: f64| 0.05 + 0.5 * v.abs());
    let b_in = &a_in * &x0 + slack;
    let pull = gauss(n, 1).column(0) * 3.0;
    let c = -(&q * (&x0 + pull));
    RandomQp { q, c, a_eq, b_eq, a_in, b_in }
}

/// Minimizer by enumeration of active sets. For every candidate set the KKT
/// system is solved directly; the first set whose solution is primal feasible
/// with nonnegative inequality multipliers is returned. Sets are visited in
/// order of increasing size, so typical instances terminate early.
pub fn enumerate_active_sets(p: &RandomQp) -> Option<DVector<f64>> {
    let n = p.c.len();
    let me = p.a_eq.nrows();
    let mi = p.a_in.nrows();
    let max_size = mi.min(n.saturating_sub(me));
    for size in 0..=max_size {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            if let Some(x) = kkt_candidate(p, &idx) {
                return Some(x);
            }
            if !next_combination(&mut idx, mi) {
                break;
            }
        }
    }
    None
}

fn kkt_candidate(p: &RandomQp, set: &[usize]) -> Option<DVector<f64>> {
    let n = p.c.len();
    let me = p.a_eq.nrows();
    let k = me + set.len();
    let mut kkt = DMatrix::zeros(n + k, n + k);
    let mut rhs = DVector::zeros(n + k);
    kkt.view_mut((0, 0), (n, n)).copy_from(&p.q);
    for i in 0..n {
        rhs[i] = -p.c[i];
    }
    for r in 0..k {
        let (row, b) = if r < me {
            (p.a_eq.row(r).into_owned(), p.b_eq[r])
        } else {
            let i = set[r - me];
            (p.a_in.row(i).into_owned(), p.b_in[i])
        };
        for j in 0..n {
            kkt[(n + r, j)] = row[j];
            kkt[(j, n + r)] = row[j];
        }
        rhs[n + r] = b;
    }
    let sol = kkt.lu().solve(&rhs)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let x = sol.rows(0, n).into_owned();
    for r in me..k {
        if sol[n + r] < -1e-9 {
            return None;
        }
    }
    let viol = &p.a_in * &x - &p.b_in;
    if viol.iter().any(|v| *v > 1e-9) {
        return None;
    }
    Some(x)
}

fn next_combination(idx: &mut [usize], m: usize) -> bool {
    let k = idx.len();
    if k == 0 {
        return false;
    }
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < m - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Central finite difference of a vector function along each coordinate.
pub fn central_difference<F>(x: &[f64], h: f64, mut f: F) -> DMatrix<f64>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let m = f(x).len();
    let mut jac = DMatrix::zeros(m, x.len());
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        xp[j] = x[j] + h;
        let fp = f(&xp);
        xp[j] = x[j] - h;
        let fm = f(&xp);
        xp[j] = x[j];
        for i in 0..m {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac
}

/// Random base pose and arm configuration strictly inside the joint limits.
pub fn random_state(model: &wholebody::kinematics::RobotModel, rng: &mut impl Rng) -> wholebody::kinematics::RobotState {
    use wholebody::kinematics::{PlanarPose, RobotState};
    let base = PlanarPose::new(
        rng.gen_range(-3.0..3.0),
        rng.gen_range(-3.0..3.0),
        rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
    );
    let q = model
        .joints
        .iter()
        .map(|j| {
            let margin = 0.02 * (j.upper - j.lower);
            rng.gen_range(j.lower + margin..j.upper - margin)
        })
        .collect();
    RobotState::new(base, q)
}

/// Moves `state` by `t` along the velocity `qd = (v, w, qd_1..)`, to first
/// order: the base slides along its current heading.
pub fn advance(
    state: &wholebody::kinematics::RobotState,
    qd: &[f64],
    t: f64,
) -> wholebody::kinematics::RobotState {
    let mut s = state.clone();
    let (sin, cos) = state.base.theta.sin_cos();
    s.base.x += t * qd[0] * cos;
    s.base.y += t * qd[0] * sin;
    s.base.theta += t * qd[1];
    for (q, v) in s.arm_q.iter_mut().zip(&qd[2..]) {
        *q += t * v;
    }
    s
}

/// Finite-difference spatial-velocity Jacobian (linear rows, then angular)
/// of an arbitrary pose-valued function of the state, one column per
/// velocity coordinate.
pub fn fd_pose_jacobian<F>(
    state: &wholebody::kinematics::RobotState,
    dof: usize,
    h: f64,
    pose: F,
) -> DMatrix<f64>
where
    F: Fn(&wholebody::kinematics::RobotState) -> nalgebra::Isometry3<f64>,
{
    let mut jac = DMatrix::zeros(6, dof);
    for j in 0..dof {
        let mut e = vec![0.0; dof];
        e[j] = 1.0;
        let p = pose(&advance(state, &e, h));
        let m = pose(&advance(state, &e, -h));
        let lin = (p.translation.vector - m.translation.vector) / (2.0 * h);
        let rel = (p.rotation * m.rotation.inverse()).scaled_axis() / (2.0 * h);
        for i in 0..3 {
            jac[(i, j)] = lin[i];
            jac[(3 + i, j)] = rel[i];
        }
    }
    jac
}
