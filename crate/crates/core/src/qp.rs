//! Convex QP front end: minimize ½xᵀPx + qᵀx s.t. A_eq x = b_eq, G x ≤ g.
//!
//! Backed by the Clarabel interior-point solver. KKT residuals are recomputed
//! here from the returned primal/dual pair rather than taken from the solver.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use serde::{Deserialize, Serialize};

/// Sparse matrix in coordinate form. Repeated entries are summed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Triplets {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols, entries: Vec::new() }
    }

    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        if v != 0.0 {
            self.entries.push((i, j, v));
        }
    }

    pub fn from_dense(rows: &[Vec<f64>], cols: usize) -> Self {
        let mut t = Self::new(rows.len(), cols);
        for (i, r) in rows.iter().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                t.push(i, j, v);
            }
        }
        t
    }

    /// y = M x
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        for &(i, j, v) in &self.entries {
            y[i] += v * x[j];
        }
        y
    }

    /// y = Mᵀ x
    pub fn mul_t(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.cols];
        for &(i, j, v) in &self.entries {
            y[j] += v * x[i];
        }
        y
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.cols]; self.rows];
        for &(i, j, v) in &self.entries {
            m[i][j] += v;
        }
        m
    }

    fn to_csc(&self, row_offset: usize, out: &mut (Vec<usize>, Vec<usize>, Vec<f64>)) {
        for &(i, j, v) in &self.entries {
            out.0.push(i + row_offset);
            out.1.push(j);
            out.2.push(v);
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QpInstance {
    /// Full symmetric Hessian (both triangles).
    pub p: Triplets,
    pub q: Vec<f64>,
    pub a_eq: Triplets,
    pub b_eq: Vec<f64>,
    pub g: Triplets,
    pub h: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum QpError {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("backend rejected the instance: {0}")]
    Backend(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum QpStatus {
    Optimal,
    /// Backend returned a reduced-accuracy point, or its point fails the residual check.
    Inaccurate,
    Infeasible,
    Unbounded,
    MaxIter,
    NumericalError,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.complementarity)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub eq_duals: Vec<f64>,
    /// Nonnegative multipliers of `G x ≤ g`.
    pub ineq_duals: Vec<f64>,
    pub status: QpStatus,
    pub objective: f64,
    pub residuals: KktResiduals,
    pub iterations: u32,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

impl QpInstance {
    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn check(&self) -> Result<(), QpError> {
        let n = self.n();
        let bad = |m: String| Err(QpError::InvalidInstance(m));
        for (name, t, rows) in [("P", &self.p, n), ("A_eq", &self.a_eq, self.b_eq.len()), ("G", &self.g, self.h.len())] {
            if t.cols != n || t.rows != rows {
                return bad(format!("{name} is {}x{}, expected {rows}x{n}", t.rows, t.cols));
            }
            if let Some(&(i, j, v)) = t.entries.iter().find(|&&(i, j, v)| i >= t.rows || j >= t.cols || !v.is_finite()) {
                return bad(format!("{name} entry ({i}, {j}) = {v} out of range or non-finite"));
            }
        }
        if !self.q.iter().chain(&self.b_eq).chain(&self.h).all(|v| v.is_finite()) {
            return bad("non-finite vector entry".into());
        }
        let d = self.p.to_dense();
        for i in 0..n {
            for j in 0..i {
                if (d[i][j] - d[j][i]).abs() > 1e-12 * (1.0 + d[i][j].abs()) {
                    return bad(format!("P not symmetric at ({i}, {j})"));
                }
            }
        }
        Ok(())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let px = self.p.mul(x);
        x.iter().zip(&px).zip(&self.q).map(|((xi, pi), qi)| 0.5 * xi * pi + qi * xi).sum()
    }

    /// Scaled ∞-norm KKT residuals of a primal/dual triple.
    pub fn residuals(&self, x: &[f64], y: &[f64], lam: &[f64]) -> KktResiduals {
        let ax = self.a_eq.mul(x);
        let gx = self.g.mul(x);
        let r_eq: Vec<f64> = ax.iter().zip(&self.b_eq).map(|(a, b)| a - b).collect();
        let r_in: Vec<f64> = gx.iter().zip(&self.h).map(|(a, b)| (a - b).max(0.0)).collect();
        let p_scale = 1.0 + inf_norm(&ax).max(inf_norm(&self.b_eq)).max(inf_norm(&gx)).max(inf_norm(&self.h));
        let primal = inf_norm(&r_eq).max(inf_norm(&r_in)) / p_scale;

        let px = self.p.mul(x);
        let aty = self.a_eq.mul_t(y);
        let gtl = self.g.mul_t(lam);
        let stat: Vec<f64> = (0..self.n()).map(|i| px[i] + self.q[i] + aty[i] + gtl[i]).collect();
        let d_scale = 1.0 + inf_norm(&px).max(inf_norm(&self.q)).max(inf_norm(&aty)).max(inf_norm(&gtl));
        let neg = lam.iter().fold(0.0f64, |a, &l| a.max(-l));
        let dual = (inf_norm(&stat) + neg) / d_scale;

        let gap = lam.iter().zip(gx.iter().zip(&self.h)).fold(0.0f64, |a, (l, (gi, hi))| a.max((l * (hi - gi)).abs()));
        let complementarity = gap / (1.0 + self.objective(x).abs());
        KktResiduals { primal, dual, complementarity }
    }
}

/// Solve with the default tolerance 1e-6 and 200 iterations.
pub fn solve_qp(inst: &QpInstance) -> Result<QpSolution, QpError> {
    solve_qp_with(inst, 1e-6, 200)
}

pub fn solve_qp_with(inst: &QpInstance, tol: f64, max_iter: u32) -> Result<QpSolution, QpError> {
    inst.check()?;
    let n = inst.n();
    let (me, mi) = (inst.b_eq.len(), inst.h.len());

    let mut pu = (Vec::new(), Vec::new(), Vec::new());
    for &(i, j, v) in inst.p.entries.iter().filter(|e| e.0 <= e.1) {
        pu.0.push(i);
        pu.1.push(j);
        pu.2.push(v);
    }
    let p = CscMatrix::new_from_triplets(n, n, pu.0, pu.1, pu.2);
    let mut at = (Vec::new(), Vec::new(), Vec::new());
    inst.a_eq.to_csc(0, &mut at);
    inst.g.to_csc(me, &mut at);
    let a = CscMatrix::new_from_triplets(me + mi, n, at.0, at.1, at.2);
    let b: Vec<f64> = inst.b_eq.iter().chain(&inst.h).copied().collect();
    let mut cones = Vec::new();
    if me > 0 {
        cones.push(SupportedConeT::ZeroConeT(me));
    }
    if mi > 0 {
        cones.push(SupportedConeT::NonnegativeConeT(mi));
    }
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(max_iter)
        .max_threads(1)
        .tol_feas((tol * 1e-4).min(1e-10))
        .tol_gap_abs((tol * 1e-4).min(1e-10))
        .tol_gap_rel((tol * 1e-4).min(1e-10))
        .build()
        .map_err(|e| QpError::Backend(format!("{e:?}")))?;
    let mut solver = DefaultSolver::new(&p, &inst.q, &a, &b, &cones, settings).map_err(|e| QpError::Backend(format!("{e:?}")))?;
    solver.solve();
    let sol = &solver.solution;

    let x = sol.x.clone();
    let eq_duals = sol.z[..me].to_vec();
    let ineq_duals = sol.z[me..].to_vec();
    let residuals = inst.residuals(&x, &eq_duals, &ineq_duals);
    let status = match sol.status {
        SolverStatus::Solved if residuals.max() <= tol => QpStatus::Optimal,
        SolverStatus::Solved | SolverStatus::AlmostSolved => QpStatus::Inaccurate,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => QpStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => QpStatus::Unbounded,
        SolverStatus::MaxIterations | SolverStatus::MaxTime => QpStatus::MaxIter,
        _ => QpStatus::NumericalError,
    };
    Ok(QpSolution { objective: inst.objective(&x), x, eq_duals, ineq_duals, status, residuals, iterations: sol.iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{qp_active_set, random_qp};
    use rand::SeedableRng;

    #[test]
    fn scalar_bound_has_unit_dual() {
        let inst = QpInstance {
            p: Triplets::from_dense(&[vec![1.0]], 1),
            q: vec![0.0],
            a_eq: Triplets::new(0, 1),
            b_eq: vec![],
            g: Triplets::from_dense(&[vec![-1.0]], 1),
            h: vec![-1.0],
        };
        let s = solve_qp(&inst).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.x[0] - 1.0).abs() < 1e-7);
        assert!((s.ineq_duals[0] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn projection_onto_hyperplane() {
        let inst = QpInstance {
            p: Triplets::from_dense(&[vec![1.0, 0.0], vec![0.0, 1.0]], 2),
            q: vec![0.0; 2],
            a_eq: Triplets::from_dense(&[vec![1.0, 1.0]], 2),
            b_eq: vec![1.0],
            g: Triplets::new(0, 2),
            h: vec![],
        };
        let s = solve_qp(&inst).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.x[0] - 0.5).abs() < 1e-8 && (s.x[1] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn infeasible_box_is_reported() {
        let inst = QpInstance {
            p: Triplets::from_dense(&[vec![1.0]], 1),
            q: vec![0.0],
            a_eq: Triplets::new(0, 1),
            b_eq: vec![],
            g: Triplets::from_dense(&[vec![1.0], vec![-1.0]], 1),
            h: vec![-1.0, -1.0],
        };
        assert_eq!(solve_qp(&inst).unwrap().status, QpStatus::Infeasible);
    }

    #[test]
    fn unbounded_linear_program() {
        let inst = QpInstance { p: Triplets::new(1, 1), q: vec![1.0], a_eq: Triplets::new(0, 1), b_eq: vec![], g: Triplets::new(0, 1), h: vec![] };
        assert_eq!(solve_qp(&inst).unwrap().status, QpStatus::Unbounded);
    }

    #[test]
    fn rejects_asymmetric_hessian() {
        let inst = QpInstance {
            p: Triplets::from_dense(&[vec![1.0, 0.5], vec![0.0, 1.0]], 2),
            q: vec![0.0; 2],
            a_eq: Triplets::new(0, 2),
            b_eq: vec![],
            g: Triplets::new(0, 2),
            h: vec![],
        };
        assert!(matches!(solve_qp(&inst), Err(QpError::InvalidInstance(_))));
    }

    #[test]
    fn matches_active_set_enumeration() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let inst = random_qp(&mut rng, 12, 6);
            let s = solve_qp(&inst).unwrap();
            let (xo, fo) = qp_active_set(&inst).expect("oracle finds the optimum");
            assert_eq!(s.status, QpStatus::Optimal);
            assert!(s.residuals.max() <= 1e-6);
            let dx = s.x.iter().zip(&xo).fold(0.0f64, |a, (u, v)| a.max((u - v).abs()));
            assert!(dx <= 1e-6, "dx {dx}");
            assert!((s.objective - fo).abs() <= 1e-6 * (1.0 + fo.abs()));
        }
    }

    #[test]
    fn row_and_variable_scaling_leave_solution_unchanged() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let inst = random_qp(&mut rng, 8, 5);
            let base = solve_qp(&inst).unwrap();
            let mut rows = inst.clone();
            for e in rows.g.entries.iter_mut() {
                e.2 *= 10.0 + e.0 as f64;
            }
            for (i, v) in rows.h.iter_mut().enumerate() {
                *v *= 10.0 + i as f64;
            }
            for e in rows.a_eq.entries.iter_mut() {
                e.2 *= 0.1;
            }
            rows.b_eq.iter_mut().for_each(|v| *v *= 0.1);
            let s = solve_qp(&rows).unwrap();
            assert!(s.x.iter().zip(&base.x).all(|(a, b)| (a - b).abs() < 1e-6));

            // x = D x', P' = D P D, q' = D q
            let d: Vec<f64> = (0..inst.n()).map(|i| 0.5 + 0.25 * i as f64).collect();
            let mut sc = inst.clone();
            sc.p.entries.iter_mut().for_each(|e| e.2 *= d[e.0] * d[e.1]);
            sc.q.iter_mut().enumerate().for_each(|(i, v)| *v *= d[i]);
            sc.a_eq.entries.iter_mut().for_each(|e| e.2 *= d[e.1]);
            sc.g.entries.iter_mut().for_each(|e| e.2 *= d[e.1]);
            let s = solve_qp(&sc).unwrap();
            assert!(s.x.iter().zip(&base.x).enumerate().all(|(i, (a, b))| (a * d[i] - b).abs() < 1e-6));
        }
    }
}
