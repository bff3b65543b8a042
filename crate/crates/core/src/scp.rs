//! Sequential convex programming for the UAV problem.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::collision::ForbiddenCircle;
use crate::qp::{solve_qp_with, QpError, QpInstance, QpStatus, Triplets};
use crate::refine::RefineError;
use crate::transcription::{Mesh, NodeTrajectory, ProblemDef, ProblemError, State, TranscriptionError};

/// Linearization `h(p) ≈ value + gradient·(p - p_ref) ≥ 0` of
/// `h(p) = |p - c|² - R²` about a node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NfzHalfplane {
    pub node: usize,
    pub region: usize,
    pub p_ref: [f64; 2],
    pub value: f64,
    pub gradient: [f64; 2],
}

impl NfzHalfplane {
    pub fn eval(&self, p: [f64; 2]) -> f64 {
        self.value + self.gradient[0] * (p[0] - self.p_ref[0]) + self.gradient[1] * (p[1] - self.p_ref[1])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearizedModel {
    pub a: Vec<[[f64; 3]; 3]>,
    pub b_ctrl: [f64; 3],
    /// `f̃(z_ref) - A z_ref`, with `f̃` the control-free part of the dynamics.
    pub offset: Vec<State>,
    /// Full dynamics at the reference nodes.
    pub f_ref: Vec<State>,
    pub sigma_ref: f64,
    pub halfplanes: Vec<NfzHalfplane>,
}

/// Control-free part of the UAV dynamics.
pub fn drift(problem: &ProblemDef, z: &State) -> State {
    [problem.v * z[2].cos(), problem.v * z[2].sin(), 0.0]
}

pub fn linearize_dynamics(problem: &ProblemDef, traj: &NodeTrajectory) -> LinearizedModel {
    let v = problem.v;
    let mut a = Vec::with_capacity(traj.states.len());
    let mut offset = Vec::with_capacity(traj.states.len());
    for z in &traj.states {
        let (s, c) = z[2].sin_cos();
        let m = [[0.0, 0.0, -v * s], [0.0, 0.0, v * c], [0.0; 3]];
        let f = drift(problem, z);
        offset.push([0, 1, 2].map(|i| f[i] - (m[i][0] * z[0] + m[i][1] * z[1] + m[i][2] * z[2])));
        a.push(m);
    }
    LinearizedModel {
        a,
        b_ctrl: [0.0, 0.0, 1.0 / v],
        offset,
        f_ref: traj.states.iter().zip(&traj.controls).map(|(z, &u)| problem.dynamics(z, u)).collect(),
        sigma_ref: traj.tf - traj.t0,
        halfplanes: Vec::new(),
    }
}

pub fn linearize_nfz(traj: &NodeTrajectory, circles: &[ForbiddenCircle<f64>]) -> Vec<NfzHalfplane> {
    let mut out = Vec::with_capacity(traj.states.len() * circles.len());
    for (node, z) in traj.states.iter().enumerate() {
        for (region, c) in circles.iter().enumerate() {
            let d = [z[0] - c.center.0, z[1] - c.center.1];
            out.push(NfzHalfplane {
                node,
                region,
                p_ref: [z[0], z[1]],
                value: d[0] * d[0] + d[1] * d[1] - c.radius * c.radius,
                gradient: [2.0 * d[0], 2.0 * d[1]],
            });
        }
    }
    out
}

/// Full linearization, halfplanes against the NFZs grown by the tolerance.
pub fn linearize(problem: &ProblemDef, traj: &NodeTrajectory) -> LinearizedModel {
    let mut m = linearize_dynamics(problem, traj);
    m.halfplanes = linearize_nfz(traj, &problem.expanded_nfz());
    m
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScpOptions {
    pub max_iter: usize,
    /// Step threshold on (x, y, gamma) for convergence.
    pub eps_conv: [f64; 3],
    pub eps_conv_sigma: f64,
    pub slack_weight: f64,
    /// Largest NFZ slack [m] and defect relaxation accepted at convergence.
    pub slack_tol: f64,
    pub sigma_min: f64,
    pub qp_tol: f64,
    pub qp_max_iter: u32,
}

impl Default for ScpOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            eps_conv: [1.0, 1.0, 1e-3],
            eps_conv_sigma: 1e-2,
            slack_weight: 1e5,
            slack_tol: 1e-6,
            sigma_min: 1.0,
            qp_tol: 1e-6,
            qp_max_iter: 200,
        }
    }
}

/// Layout and scaling of the subproblem variables.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Layout {
    pub nodes: usize,
    pub regions: usize,
    /// Scale of (x, y, gamma, u, sigma, slack).
    pub scale: [f64; 6],
}

impl Layout {
    pub fn new(problem: &ProblemDef, nodes: usize) -> Self {
        let sp = problem.v * problem.tf_guess / 10.0;
        Self { nodes, regions: problem.nfz.len(), scale: [sp, sp, 1.0, problem.u_max, problem.tf_guess, sp] }
    }
    pub fn z(&self, j: usize, c: usize) -> usize {
        3 * j + c
    }
    pub fn u(&self, j: usize) -> usize {
        3 * self.nodes + j
    }
    pub fn sigma(&self) -> usize {
        4 * self.nodes
    }
    pub fn slack(&self, j: usize, r: usize) -> usize {
        4 * self.nodes + 1 + j * self.regions + r
    }
    /// Nonnegative parts of the virtual control on defect row (j, c).
    pub fn virt(&self, j: usize, c: usize, neg: bool) -> usize {
        4 * self.nodes + 1 + self.nodes * self.regions + 2 * (3 * j + c) + neg as usize
    }
    pub fn len(&self) -> usize {
        4 * self.nodes + 1 + self.nodes * self.regions + 6 * (self.nodes - 1)
    }
    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Subproblem around `traj`; variables are stored scaled per [`Layout`].
pub fn assemble_subproblem(
    model: &LinearizedModel,
    mesh: &Mesh,
    problem: &ProblemDef,
    traj: &NodeTrajectory,
    opts: &ScpOptions,
) -> Result<(QpInstance, Layout), TranscriptionError> {
    let n = mesh.len();
    traj.check(mesh)?;
    for got in [model.a.len(), model.offset.len(), model.f_ref.len()] {
        if got != n {
            return Err(TranscriptionError::DimensionMismatch { expected: n, got });
        }
    }
    let lay = Layout::new(problem, n);
    let nv = lay.len();
    let sc = lay.scale;
    let sk = model.sigma_ref;
    let mut inst = QpInstance {
        p: Triplets::new(nv, nv),
        q: vec![0.0; nv],
        a_eq: Triplets::new(0, nv),
        b_eq: vec![],
        g: Triplets::new(0, nv),
        h: vec![],
    };

    // cost normalized by sigma_ref * u_max²
    let w = mesh.trapezoid_weights();
    for j in 0..n {
        inst.p.push(lay.u(j), lay.u(j), w[j]);
    }
    let slack_cost = opts.slack_weight * sc[5] / (sk * problem.u_max * problem.u_max);
    for j in 0..n {
        for r in 0..lay.regions {
            inst.q[lay.slack(j, r)] = slack_cost;
        }
    }
    for j in 0..n - 1 {
        for c in 0..3 {
            inst.q[lay.virt(j, c, false)] = slack_cost;
            inst.q[lay.virt(j, c, true)] = slack_cost;
        }
    }

    let eq = |row: Vec<(usize, f64)>, rhs: f64, inst: &mut QpInstance| {
        let i = inst.b_eq.len();
        for (k, v) in row {
            inst.a_eq.push(i, k, v);
        }
        inst.b_eq.push(rhs);
        inst.a_eq.rows += 1;
    };
    // trapezoid defects, sigma·f expanded to first order
    for j in 0..n - 1 {
        let h = mesh.dtau(j) / 4.0;
        for c in 0..3 {
            let s = sc[c];
            let mut row = vec![(lay.z(j + 1, c), 1.0), (lay.z(j, c), -1.0), (lay.virt(j, c, false), -1.0), (lay.virt(j, c, true), 1.0)];
            for node in [j, j + 1] {
                for k in 0..3 {
                    let a = model.a[node][c][k];
                    if a != 0.0 {
                        row.push((lay.z(node, k), -h * sk * a * sc[k] / s));
                    }
                }
                if model.b_ctrl[c] != 0.0 {
                    row.push((lay.u(node), -h * sk * model.b_ctrl[c] * sc[3] / s));
                }
            }
            let fsum = model.f_ref[j][c] + model.f_ref[j + 1][c];
            row.push((lay.sigma(), -h * fsum * sc[4] / s));
            let rhs = h * sk * (model.offset[j][c] + model.offset[j + 1][c]) - h * fsum * sk;
            eq(row, rhs / s, &mut inst);
        }
    }
    for (node, pose) in [(0, problem.start), (n - 1, problem.goal)] {
        for c in 0..3 {
            eq(vec![(lay.z(node, c), 1.0)], pose[c] / sc[c], &mut inst);
        }
    }

    let le = |row: Vec<(usize, f64)>, rhs: f64, inst: &mut QpInstance| {
        let i = inst.h.len();
        for (k, v) in row {
            inst.g.push(i, k, v);
        }
        inst.h.push(rhs);
        inst.g.rows += 1;
    };
    let umax = problem.u_max / sc[3];
    for j in 0..n {
        le(vec![(lay.u(j), 1.0)], umax, &mut inst);
        le(vec![(lay.u(j), -1.0)], umax, &mut inst);
    }
    for j in 0..n {
        for c in 0..3 {
            let zr = traj.states[j][c] / sc[c];
            let tr = problem.eps_trc[c] / sc[c];
            le(vec![(lay.z(j, c), 1.0)], zr + tr, &mut inst);
            le(vec![(lay.z(j, c), -1.0)], tr - zr, &mut inst);
        }
    }
    let sr = sk / sc[4];
    let st = problem.sigma_trust / sc[4];
    le(vec![(lay.sigma(), 1.0)], sr + st, &mut inst);
    le(vec![(lay.sigma(), -1.0)], (st - sr).min(-opts.sigma_min / sc[4]), &mut inst);

    // normalized halfplanes: value/|g| + ĝ·(p - p_ref) + slack ≥ 0, in metres
    for hp in &model.halfplanes {
        let gn = hp.gradient[0].hypot(hp.gradient[1]);
        let (nx, ny, val) = if gn > 0.0 { (hp.gradient[0] / gn, hp.gradient[1] / gn, hp.value / gn) } else { (1.0, 0.0, hp.value) };
        let rhs = val - nx * hp.p_ref[0] - ny * hp.p_ref[1];
        le(
            vec![(lay.z(hp.node, 0), -nx * sc[0] / sc[5]), (lay.z(hp.node, 1), -ny * sc[1] / sc[5]), (lay.slack(hp.node, hp.region), -1.0)],
            rhs / sc[5],
            &mut inst,
        );
    }
    for k in lay.slack(0, 0)..nv {
        le(vec![(k, -1.0)], 0.0, &mut inst);
    }
    Ok((inst, lay))
}

/// Unscaled trajectory, largest NFZ slack [m] and largest virtual control
/// (in the units of each state) from a subproblem solution.
pub fn extract(lay: &Layout, x: &[f64]) -> (NodeTrajectory, f64, f64) {
    let sc = lay.scale;
    let states = (0..lay.nodes).map(|j| [0, 1, 2].map(|c| x[lay.z(j, c)] * sc[c])).collect();
    let controls = (0..lay.nodes).map(|j| x[lay.u(j)] * sc[3]).collect();
    let slack = (0..lay.nodes * lay.regions).map(|i| x[lay.slack(0, 0) + i] * sc[5]).fold(0.0f64, f64::max);
    let mut virt = 0.0f64;
    for j in 0..lay.nodes - 1 {
        for c in 0..3 {
            virt = virt.max((x[lay.virt(j, c, false)] - x[lay.virt(j, c, true)]).abs() * sc[c]);
        }
    }
    (NodeTrajectory { states, controls, t0: 0.0, tf: x[lay.sigma()] * sc[4] }, slack, virt)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScpIterate {
    pub iteration: usize,
    pub traj: NodeTrajectory,
    pub mesh: Mesh,
    /// Largest |Δ| per state component against the previous iterate.
    pub step: [f64; 3],
    pub step_sigma: f64,
    /// Largest step relative to the convergence threshold.
    pub metric: f64,
    pub max_slack: f64,
    /// Largest defect relaxation.
    pub max_virtual: f64,
    pub cost: f64,
    pub qp_status: QpStatus,
    pub qp_iterations: u32,
    /// Intervals split by the refinement hook after this iteration.
    pub splits: Vec<usize>,
    pub subproblem_ms: f64,
    pub refine_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScpRun {
    pub history: Vec<ScpIterate>,
    pub traj: NodeTrajectory,
    pub mesh: Mesh,
    pub converged: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum ScpError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Transcription(#[from] TranscriptionError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("subproblem {status:?} at iteration {iteration}")]
    SubproblemFailed { iteration: usize, status: QpStatus, run: Box<ScpRun> },
    #[error("no convergence within {} iterations", .0.history.len())]
    MaxIterationExceeded(Box<ScpRun>),
    #[error(transparent)]
    Refine(RefineError),
}

impl ScpError {
    /// The partial run, when one exists.
    pub fn run(&self) -> Option<&ScpRun> {
        match self {
            ScpError::SubproblemFailed { run, .. } | ScpError::MaxIterationExceeded(run) => Some(run),
            ScpError::Refine(RefineError::BudgetExceeded { run, .. }) => run.as_deref(),
            _ => None,
        }
    }
}

/// Mesh update proposed after an SCP iteration.
pub struct HookOutcome {
    pub mesh: Mesh,
    pub splits: Vec<usize>,
}

pub trait RefineHook {
    fn refine(&mut self, problem: &ProblemDef, traj: &NodeTrajectory, mesh: &Mesh) -> Result<Option<HookOutcome>, RefineError>;
}

/// Plain SCP.
pub struct NoRefine;

impl RefineHook for NoRefine {
    fn refine(&mut self, _: &ProblemDef, _: &NodeTrajectory, _: &Mesh) -> Result<Option<HookOutcome>, RefineError> {
        Ok(None)
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

pub struct Step {
    pub traj: NodeTrajectory,
    pub max_slack: f64,
    pub max_virtual: f64,
    pub status: QpStatus,
    pub qp_iterations: u32,
}

/// One subproblem solve around `traj`.
pub fn scp_step(problem: &ProblemDef, mesh: &Mesh, traj: &NodeTrajectory, opts: &ScpOptions) -> Result<Step, ScpError> {
    let model = linearize(problem, traj);
    let (inst, lay) = assemble_subproblem(&model, mesh, problem, traj, opts)?;
    let sol = solve_qp_with(&inst, opts.qp_tol, opts.qp_max_iter)?;
    let (next, max_slack, max_virtual) = extract(&lay, &sol.x);
    Ok(Step { traj: next, max_slack, max_virtual, status: sol.status, qp_iterations: sol.iterations })
}

pub fn scp_loop<H: RefineHook + ?Sized>(
    problem: &ProblemDef,
    mesh: Mesh,
    guess: NodeTrajectory,
    opts: &ScpOptions,
    hook: &mut H,
) -> Result<ScpRun, ScpError> {
    problem.validate()?;
    guess.check(&mesh)?;
    let mut run = ScpRun { history: Vec::new(), traj: guess, mesh, converged: false };
    for iteration in 1..=opts.max_iter {
        let t = Instant::now();
        let Step { traj: next, max_slack, max_virtual, status, qp_iterations } = scp_step(problem, &run.mesh, &run.traj, opts)?;
        let subproblem_ms = ms(t);
        if !matches!(status, QpStatus::Optimal | QpStatus::Inaccurate) {
            return Err(ScpError::SubproblemFailed { iteration, status, run: Box::new(run) });
        }
        let mut step = [0.0f64; 3];
        for (a, b) in next.states.iter().zip(&run.traj.states) {
            for c in 0..3 {
                step[c] = step[c].max((a[c] - b[c]).abs());
            }
        }
        let step_sigma = ((next.tf - next.t0) - (run.traj.tf - run.traj.t0)).abs();
        let metric = (0..3).map(|c| step[c] / opts.eps_conv[c]).fold(step_sigma / opts.eps_conv_sigma, f64::max);
        let cost = crate::transcription::discrete_cost(&next, &run.mesh);

        let t = Instant::now();
        let outcome = match hook.refine(problem, &next, &run.mesh) {
            Ok(o) => o,
            Err(e) => {
                run.traj = next;
                return Err(ScpError::Refine(e.with_run(run)));
            }
        };
        let refine_ms = ms(t);
        let snapshot = run.mesh.clone();
        let splits = match outcome {
            Some(o) => {
                run.traj = crate::transcription::interpolate_onto(&next, &run.mesh, &o.mesh);
                run.mesh = o.mesh;
                o.splits
            }
            None => {
                run.traj = next.clone();
                Vec::new()
            }
        };
        let done = metric < 1.0 && max_slack <= opts.slack_tol && max_virtual <= opts.slack_tol && splits.is_empty();
        run.history.push(ScpIterate {
            iteration,
            traj: next,
            mesh: snapshot,
            step,
            step_sigma,
            metric,
            max_slack,
            max_virtual,
            cost,
            qp_status: status,
            qp_iterations,
            splits,
            subproblem_ms,
            refine_ms,
        });
        if done {
            run.converged = true;
            return Ok(run);
        }
    }
    Err(ScpError::MaxIterationExceeded(Box::new(run)))
}
