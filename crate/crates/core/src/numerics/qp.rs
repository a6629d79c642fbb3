//! Dense convex quadratic programming by operator splitting (ADMM).
//!
//! Solves
//! ```text
//!     minimize    1/2 x' P x + q' x
//!     subject to  A x = b
//!                 l <= G x <= u
//! ```
//! with `P` symmetric positive semidefinite. The iteration applies
//! over-relaxed ADMM on the stacked constraint matrix with Ruiz
//! diagonal preconditioning, a fixed penalty that is adapted
//! periodically, and an active-set polish step that refines the
//! returned point to near machine precision when it succeeds. All
//! arithmetic is deterministic: identical inputs and configuration
//! produce bitwise-identical iterates.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Problem data for [`qp_solve`].
#[derive(Debug, Clone)]
pub struct QpProblem {
    /// Symmetric positive-semidefinite cost matrix.
    pub quadratic: DMatrix<f64>,
    /// Linear cost vector.
    pub linear: DVector<f64>,
    /// Equality constraint matrix (`A x = b`); may have zero rows.
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    /// Two-sided inequality matrix (`l <= G x <= u`); may have zero rows.
    pub ineq_matrix: DMatrix<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl QpProblem {
    pub fn num_vars(&self) -> usize {
        self.linear.len()
    }

    pub fn num_rows(&self) -> usize {
        self.eq_rhs.len() + self.lower.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * (x.transpose() * &self.quadratic * x)[(0, 0)] + self.linear.dot(x)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        let mut problems = Vec::new();
        if self.quadratic.nrows() != n || self.quadratic.ncols() != n {
            problems.push(format!(
                "cost matrix is {}x{}, expected {n}x{n}",
                self.quadratic.nrows(),
                self.quadratic.ncols()
            ));
        } else {
            let asym = (&self.quadratic - self.quadratic.transpose()).amax();
            if asym > 1e-12 {
                problems.push(format!("cost matrix asymmetry {asym} exceeds 1e-12"));
            }
        }
        if self.eq_matrix.nrows() != self.eq_rhs.len() || self.eq_matrix.ncols().max(n) != n {
            problems.push("equality block dimensions inconsistent".into());
        }
        if self.ineq_matrix.nrows() != self.lower.len()
            || self.lower.len() != self.upper.len()
            || self.ineq_matrix.ncols().max(n) != n
        {
            problems.push("inequality block dimensions inconsistent".into());
        }
        for i in 0..self.lower.len().min(self.upper.len()) {
            if self.lower[i] > self.upper[i] {
                problems.push(format!(
                    "inequality row {i} has lower {} > upper {}",
                    self.lower[i], self.upper[i]
                ));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

/// Primal/dual point returned by [`qp_solve`].
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Duals for every row, equalities first then inequalities. Positive
    /// entries push against upper bounds, negative against lower bounds.
    pub y: DVector<f64>,
    pub status: QpStatus,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: u32,
    /// Whether the active-set refinement was applied to the returned point.
    pub polished: bool,
}

#[derive(Debug, Clone)]
pub struct QpConfig {
    /// Absolute KKT residual target.
    pub tol: f64,
    pub max_iter: u32,
    /// Over-relaxation coefficient.
    pub relaxation: f64,
    /// Primal regularization added to the KKT diagonal.
    pub reg: f64,
    /// Initial penalty; equality rows use `rho * 1e3`.
    pub rho: f64,
    pub adaptive_rho: bool,
    /// Residuals are checked (and polish attempted) every this many iterations.
    pub check_every: u32,
    pub scaling_iters: u32,
    pub polish: bool,
    pub infeasibility_tol: f64,
}

impl Default for QpConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 20_000,
            relaxation: 1.6,
            reg: 1e-6,
            rho: 0.1,
            adaptive_rho: true,
            check_every: 25,
            scaling_iters: 10,
            polish: true,
            infeasibility_tol: 1e-5,
        }
    }
}

impl QpConfig {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

/// Solves the QP from a cold start.
pub fn qp_solve(problem: &QpProblem, cfg: &QpConfig) -> Result<QpSolution> {
    qp_solve_hinted(problem, cfg, None)
}

/// Solves the QP, optionally warm-starting the primal iterate.
pub fn qp_solve_hinted(
    problem: &QpProblem,
    cfg: &QpConfig,
    hint: Option<&DVector<f64>>,
) -> Result<QpSolution> {
    problem.validate()?;
    let mut work = Workspace::new(problem, cfg);
    if let Some(x0) = hint {
        if x0.len() == problem.num_vars() {
            work.warm_start(x0);
        }
    }
    Ok(work.run(problem, cfg))
}

/// Worst complementary-slackness violation `|y_j * slack_j|` over the
/// inequality rows of a solution.
pub fn complementarity_violation(problem: &QpProblem, sol: &QpSolution) -> f64 {
    let m_eq = problem.eq_rhs.len();
    let gx = &problem.ineq_matrix * &sol.x;
    let mut worst: f64 = 0.0;
    for i in 0..problem.lower.len() {
        let y = sol.y[m_eq + i];
        let slack = if y >= 0.0 {
            problem.upper[i] - gx[i]
        } else {
            gx[i] - problem.lower[i]
        };
        if slack.is_finite() {
            worst = worst.max((y * slack).abs());
        }
    }
    worst
}

struct Workspace {
    n: usize,
    m: usize,
    // Unscaled stacked data.
    mat: DMatrix<f64>,
    lo: DVector<f64>,
    hi: DVector<f64>,
    // Scaled data.
    p_s: DMatrix<f64>,
    q_s: DVector<f64>,
    mat_s: DMatrix<f64>,
    lo_s: DVector<f64>,
    hi_s: DVector<f64>,
    // Scalers: x = d .* x_s, z = z_s ./ e, y = (e .* y_s) / c.
    d: DVector<f64>,
    e: DVector<f64>,
    c: f64,
    rho_bar: f64,
    rho: DVector<f64>,
    x: DVector<f64>,
    z: DVector<f64>,
    y: DVector<f64>,
    kkt: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

struct ResidualInfo {
    prim: f64,
    dual: f64,
}

impl Workspace {
    fn new(problem: &QpProblem, cfg: &QpConfig) -> Self {
        let n = problem.num_vars();
        let m_eq = problem.eq_rhs.len();
        let m_in = problem.lower.len();
        let m = m_eq + m_in;

        let mut mat = DMatrix::zeros(m, n);
        let mut lo = DVector::zeros(m);
        let mut hi = DVector::zeros(m);
        for r in 0..m_eq {
            mat.row_mut(r).copy_from(&problem.eq_matrix.row(r));
            lo[r] = problem.eq_rhs[r];
            hi[r] = problem.eq_rhs[r];
        }
        for r in 0..m_in {
            mat.row_mut(m_eq + r).copy_from(&problem.ineq_matrix.row(r));
            lo[m_eq + r] = problem.lower[r];
            hi[m_eq + r] = problem.upper[r];
        }

        let mut w = Self {
            n,
            m,
            p_s: problem.quadratic.clone(),
            q_s: problem.linear.clone(),
            mat_s: mat.clone(),
            lo_s: lo.clone(),
            hi_s: hi.clone(),
            mat,
            lo,
            hi,
            d: DVector::repeat(n, 1.0),
            e: DVector::repeat(m, 1.0),
            c: 1.0,
            rho_bar: cfg.rho,
            rho: DVector::zeros(m),
            x: DVector::zeros(n),
            z: DVector::zeros(m),
            y: DVector::zeros(m),
            kkt: None,
        };
        w.scale(cfg.scaling_iters);
        w.set_rho(cfg.rho);
        w
    }

    fn warm_start(&mut self, x0: &DVector<f64>) {
        for j in 0..self.n {
            self.x[j] = x0[j] / self.d[j];
        }
        self.z = &self.mat_s * &self.x;
    }

    /// Ruiz equilibration of the stacked KKT matrix plus cost normalization.
    fn scale(&mut self, iters: u32) {
        let clamp = |v: f64| v.clamp(1e-8, 1e8);
        let clamp_delta = |v: f64| v.clamp(1e-4, 1e4);
        for _ in 0..iters {
            let mut delta_d = DVector::repeat(self.n, 1.0);
            for j in 0..self.n {
                let mut norm: f64 = 0.0;
                for i in 0..self.n {
                    norm = norm.max(self.p_s[(i, j)].abs());
                }
                for i in 0..self.m {
                    norm = norm.max(self.mat_s[(i, j)].abs());
                }
                if norm > 0.0 {
                    delta_d[j] = clamp_delta(1.0 / clamp(norm).sqrt());
                }
            }
            let mut delta_e = DVector::repeat(self.m, 1.0);
            for i in 0..self.m {
                let mut norm: f64 = 0.0;
                for j in 0..self.n {
                    norm = norm.max(self.mat_s[(i, j)].abs());
                }
                if norm > 0.0 {
                    delta_e[i] = clamp_delta(1.0 / clamp(norm).sqrt());
                }
            }
            for i in 0..self.n {
                for j in 0..self.n {
                    self.p_s[(i, j)] *= delta_d[i] * delta_d[j];
                }
            }
            for i in 0..self.m {
                for j in 0..self.n {
                    self.mat_s[(i, j)] *= delta_e[i] * delta_d[j];
                }
            }
            for j in 0..self.n {
                self.q_s[j] *= delta_d[j];
                self.d[j] *= delta_d[j];
            }
            for i in 0..self.m {
                self.lo_s[i] *= delta_e[i];
                self.hi_s[i] *= delta_e[i];
                self.e[i] *= delta_e[i];
            }

            // Cost normalization.
            let mut mean_col: f64 = 0.0;
            for j in 0..self.n {
                let mut norm: f64 = 0.0;
                for i in 0..self.n {
                    norm = norm.max(self.p_s[(i, j)].abs());
                }
                mean_col += norm;
            }
            mean_col /= self.n.max(1) as f64;
            let q_norm = self.q_s.amax();
            let mut gamma = clamp_delta(1.0 / clamp(mean_col.max(q_norm).max(1e-10)));
            // Keep the cumulative cost scaling bounded so unscaled duals
            // stay well above the floating-point noise floor.
            gamma = (self.c * gamma).clamp(1e-4, 1e4) / self.c;
            self.p_s *= gamma;
            self.q_s *= gamma;
            self.c *= gamma;
        }
    }

    fn set_rho(&mut self, rho_bar: f64) {
        self.rho_bar = rho_bar;
        for i in 0..self.m {
            self.rho[i] = if self.lo[i] == self.hi[i] { rho_bar * 1e3 } else { rho_bar };
        }
        self.kkt = None;
    }

    fn factorize(&mut self, reg: f64) {
        let dim = self.n + self.m;
        let mut kkt = DMatrix::zeros(dim, dim);
        for i in 0..self.n {
            for j in 0..self.n {
                kkt[(i, j)] = self.p_s[(i, j)];
            }
            kkt[(i, i)] += reg;
        }
        for i in 0..self.m {
            for j in 0..self.n {
                kkt[(self.n + i, j)] = self.mat_s[(i, j)];
                kkt[(j, self.n + i)] = self.mat_s[(i, j)];
            }
            kkt[(self.n + i, self.n + i)] = -1.0 / self.rho[i];
        }
        self.kkt = Some(kkt.lu());
    }

    fn unscaled(&self) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let x = self.d.component_mul(&self.x);
        let z = self.z.component_div(&self.e);
        let y = self.e.component_mul(&self.y) / self.c;
        (x, z, y)
    }

    fn residuals(&self, problem: &QpProblem, x: &DVector<f64>, y: &DVector<f64>) -> ResidualInfo {
        let mx = &self.mat * x;
        let mut prim: f64 = 0.0;
        for i in 0..self.m {
            let below = self.lo[i] - mx[i];
            let above = mx[i] - self.hi[i];
            prim = prim.max(below.max(above).max(0.0));
        }
        let grad = &problem.quadratic * x + &problem.linear + self.mat.transpose() * y;
        ResidualInfo { prim, dual: grad.amax() }
    }

    fn primal_infeasible(&self, delta_y_scaled: &DVector<f64>, tol: f64) -> bool {
        let dy = self.e.component_mul(delta_y_scaled) / self.c;
        let norm = dy.amax();
        if norm <= 1e-12 {
            return false;
        }
        let mt_dy = self.mat.transpose() * &dy;
        if mt_dy.amax() > tol * norm {
            return false;
        }
        let mut support = 0.0;
        for i in 0..self.m {
            let v = dy[i];
            // Certificate components pushing on an unbounded side must be
            // iteration noise, otherwise this is no certificate.
            if v > 0.0 {
                if self.hi[i].is_infinite() {
                    if v > tol * norm {
                        return false;
                    }
                } else {
                    support += self.hi[i] * v;
                }
            } else if v < 0.0 {
                if self.lo[i].is_infinite() {
                    if -v > tol * norm {
                        return false;
                    }
                } else {
                    support += self.lo[i] * v;
                }
            }
        }
        support <= -tol * norm
    }

    fn run(&mut self, problem: &QpProblem, cfg: &QpConfig) -> QpSolution {
        if self.kkt.is_none() {
            self.factorize(cfg.reg);
        }
        let mut y_prev_check = self.y.clone();
        let mut best = self.snapshot(problem, cfg, false);

        let mut iter = 0;
        while iter < cfg.max_iter {
            iter += 1;
            self.step(cfg);

            if iter % cfg.check_every == 0 || iter == cfg.max_iter {
                let snap = self.snapshot(problem, cfg, false);
                if snap.quality() < best.quality() {
                    best = snap.clone();
                }
                if snap.res.prim <= cfg.tol && snap.res.dual <= cfg.tol {
                    return snap.into_solution(QpStatus::Optimal, iter);
                }
                // The refinement is one small factorization; once the duals
                // identify the right active set it finishes the solve.
                if cfg.polish {
                    if let Some(pol) = self.polish(problem, cfg, &snap) {
                        if pol.res.prim <= cfg.tol && pol.res.dual <= cfg.tol {
                            return pol.into_solution(QpStatus::Optimal, iter);
                        }
                        if pol.quality() < best.quality() {
                            best = pol;
                        }
                    }
                }
                let delta_y = &self.y - &y_prev_check;
                if self.primal_infeasible(&delta_y, cfg.infeasibility_tol) {
                    let (x, _, y) = self.unscaled();
                    let res = self.residuals(problem, &x, &y);
                    return QpSolution {
                        x,
                        y,
                        status: QpStatus::Infeasible,
                        primal_residual: res.prim,
                        dual_residual: res.dual,
                        iterations: iter,
                        polished: false,
                    };
                }
                y_prev_check = self.y.clone();

                if cfg.adaptive_rho {
                    self.maybe_adapt_rho(cfg, &snap.res);
                }
            }
        }
        best.into_solution(QpStatus::MaxIterations, cfg.max_iter)
    }

    fn step(&mut self, cfg: &QpConfig) {
        let kkt = self.kkt.as_ref().expect("factorized");
        let mut rhs = DVector::zeros(self.n + self.m);
        for j in 0..self.n {
            rhs[j] = cfg.reg * self.x[j] - self.q_s[j];
        }
        for i in 0..self.m {
            rhs[self.n + i] = self.z[i] - self.y[i] / self.rho[i];
        }
        let sol = kkt.solve(&rhs).expect("quasi-definite KKT system is invertible");
        let xt = sol.rows(0, self.n).into_owned();
        let nu = sol.rows(self.n, self.m).into_owned();

        let alpha = cfg.relaxation;
        let mut zt = DVector::zeros(self.m);
        for i in 0..self.m {
            zt[i] = self.z[i] + (nu[i] - self.y[i]) / self.rho[i];
        }
        for j in 0..self.n {
            self.x[j] = alpha * xt[j] + (1.0 - alpha) * self.x[j];
        }
        for i in 0..self.m {
            let z_relaxed = alpha * zt[i] + (1.0 - alpha) * self.z[i];
            let z_new =
                (z_relaxed + self.y[i] / self.rho[i]).clamp(self.lo_s[i], self.hi_s[i]);
            self.y[i] += self.rho[i] * (z_relaxed - z_new);
            self.z[i] = z_new;
        }
    }

    /// Rebalances the penalty toward whichever unscaled residual lags.
    fn maybe_adapt_rho(&mut self, cfg: &QpConfig, res: &ResidualInfo) {
        let ratio = (res.prim.max(1e-16) / res.dual.max(1e-16)).sqrt();
        let rho_new = (self.rho_bar * ratio).clamp(1e-6, 1e6);
        if rho_new > 5.0 * self.rho_bar || rho_new < self.rho_bar / 5.0 {
            self.set_rho(rho_new);
            self.factorize(cfg.reg);
        }
    }

    fn snapshot(&self, problem: &QpProblem, _cfg: &QpConfig, polished: bool) -> Snapshot {
        let (x, _, y) = self.unscaled();
        let res = self.residuals(problem, &x, &y);
        Snapshot { x, y, res, polished }
    }

    /// Active-set refinement. Starting from the rows the ADMM duals mark
    /// active, repeatedly solves the equality-constrained KKT system (with
    /// tiny regularization and iterative refinement), pulls violated rows
    /// into the set, and expels rows whose multipliers carry the wrong
    /// sign. On agreement this yields the exact solution; a set that will
    /// not settle leaves the iterate to the ADMM loop.
    fn polish(&self, problem: &QpProblem, cfg: &QpConfig, snap: &Snapshot) -> Option<Snapshot> {
        const ROUNDS: usize = 8;
        // -1 pinned at the lower bound, +1 at the upper, 0 inactive.
        let mut side = vec![0i8; self.m];
        let act_tol = 1e-7 * snap.y.amax().max(1e-9);
        for i in 0..self.m {
            if self.lo[i] == self.hi[i] || snap.y[i] < -act_tol {
                side[i] = -1;
            } else if snap.y[i] > act_tol {
                side[i] = 1;
            }
        }

        let feas_tol = 1e-9;
        let mut best: Option<Snapshot> = None;
        for _ in 0..ROUNDS {
            let active: Vec<usize> = (0..self.m).filter(|&i| side[i] != 0).collect();
            let na = active.len();
            let dim = self.n + na;
            let mut k0 = DMatrix::zeros(dim, dim);
            for i in 0..self.n {
                for j in 0..self.n {
                    k0[(i, j)] = problem.quadratic[(i, j)];
                }
            }
            let mut rhs = DVector::zeros(dim);
            for j in 0..self.n {
                rhs[j] = -problem.linear[j];
            }
            for (r, &row) in active.iter().enumerate() {
                for j in 0..self.n {
                    k0[(self.n + r, j)] = self.mat[(row, j)];
                    k0[(j, self.n + r)] = self.mat[(row, j)];
                }
                rhs[self.n + r] = if side[row] < 0 { self.lo[row] } else { self.hi[row] };
            }

            let delta = 1e-9;
            let mut k_reg = k0.clone();
            for i in 0..self.n {
                k_reg[(i, i)] += delta;
            }
            for r in 0..na {
                k_reg[(self.n + r, self.n + r)] -= delta;
            }
            let lu = k_reg.lu();
            let mut sol = lu.solve(&rhs)?;
            for _ in 0..3 {
                let resid = &rhs - &k0 * &sol;
                let corr = lu.solve(&resid)?;
                sol += corr;
            }

            let x = sol.rows(0, self.n).into_owned();
            let mut y = DVector::zeros(self.m);
            for (r, &row) in active.iter().enumerate() {
                y[row] = sol[self.n + r];
            }
            let mx = &self.mat * &x;
            let mut changes = 0;
            for i in 0..self.m {
                if self.lo[i] == self.hi[i] {
                    continue;
                }
                if side[i] == 0 {
                    if mx[i] < self.lo[i] - feas_tol {
                        side[i] = -1;
                        changes += 1;
                    } else if mx[i] > self.hi[i] + feas_tol {
                        side[i] = 1;
                        changes += 1;
                    }
                } else if (side[i] < 0 && y[i] > feas_tol) || (side[i] > 0 && y[i] < -feas_tol) {
                    side[i] = 0;
                    changes += 1;
                }
            }
            if changes == 0 {
                let res = self.residuals(problem, &x, &y);
                if res.prim.max(res.dual) < snap.res.prim.max(snap.res.dual) {
                    return Some(Snapshot { x, y, res, polished: true });
                }
                return None;
            }
            // Keep the best intermediate point in case the set cycles.
            let res = self.residuals(problem, &x, &y);
            if res.prim.max(res.dual) < snap.res.prim.max(snap.res.dual)
                && best.as_ref().is_none_or(|b| res.prim.max(res.dual) < b.quality())
            {
                best = Some(Snapshot { x, y, res, polished: true });
            }
        }
        best
    }
}

#[derive(Clone)]
struct Snapshot {
    x: DVector<f64>,
    y: DVector<f64>,
    res: ResidualInfo,
    polished: bool,
}

impl Clone for ResidualInfo {
    fn clone(&self) -> Self {
        Self { prim: self.prim, dual: self.dual }
    }
}

impl Snapshot {
    fn quality(&self) -> f64 {
        self.res.prim.max(self.res.dual)
    }

    fn into_solution(self, status: QpStatus, iterations: u32) -> QpSolution {
        QpSolution {
            x: self.x,
            y: self.y,
            status,
            primal_residual: self.res.prim,
            dual_residual: self.res.dual,
            iterations,
            polished: self.polished,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn solve(p: &QpProblem) -> QpSolution {
        qp_solve(p, &QpConfig::default()).unwrap()
    }

    /// min x^2 subject to x >= 1.
    #[test]
    fn active_bound() {
        let p = QpProblem {
            quadratic: DMatrix::from_row_slice(1, 1, &[2.0]),
            linear: DVector::zeros(1),
            eq_matrix: DMatrix::zeros(0, 1),
            eq_rhs: DVector::zeros(0),
            ineq_matrix: DMatrix::from_row_slice(1, 1, &[1.0]),
            lower: DVector::from_element(1, 1.0),
            upper: DVector::from_element(1, f64::INFINITY),
        };
        let sol = solve(&p);
        assert_eq!(sol.status, QpStatus::Optimal);
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn infeasible_rows_detected() {
        // x1 + x2 = 0 but both forced into [1, 2].
        let p = QpProblem {
            quadratic: DMatrix::identity(2, 2),
            linear: DVector::zeros(2),
            eq_matrix: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            eq_rhs: DVector::zeros(1),
            ineq_matrix: DMatrix::identity(2, 2),
            lower: DVector::from_element(2, 1.0),
            upper: DVector::from_element(2, 2.0),
        };
        let sol = solve(&p);
        assert_eq!(sol.status, QpStatus::Infeasible);
    }

    #[test]
    fn rejects_asymmetric_cost() {
        let p = QpProblem {
            quadratic: DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]),
            linear: DVector::zeros(2),
            eq_matrix: DMatrix::zeros(0, 2),
            eq_rhs: DVector::zeros(0),
            ineq_matrix: DMatrix::zeros(0, 2),
            lower: DVector::zeros(0),
            upper: DVector::zeros(0),
        };
        assert!(matches!(qp_solve(&p, &QpConfig::default()), Err(Error::Validation(_))));
    }
}
