//! Constraint-aware mesh refinement driven by envelope patches.

use serde::{Deserialize, Serialize};

use crate::collision::{circle_patch_depth, IntrusionReport};
use crate::dubins::OrientedPoint;
use crate::envelope::{build_patches_with, EnvelopeError, EnvelopeOptions, EnvelopeQuery, InfeasibleReason, RectPatch};
use crate::scp::{scp_loop, HookOutcome, NoRefine, RefineHook, ScpError, ScpOptions, ScpRun};
use crate::transcription::{interpolate_onto, trapezoid_defects, Mesh, NodeTrajectory, ProblemDef};

#[derive(Debug, thiserror::Error)]
pub enum RefineError {
    #[error("interval {origin} of the initial mesh needs split {splits}, cap is {cap}")]
    BudgetExceeded { origin: usize, splits: u32, cap: u32, run: Option<Box<ScpRun>> },
    #[error(transparent)]
    Envelope(EnvelopeError),
}

impl RefineError {
    pub(crate) fn with_run(self, run: ScpRun) -> Self {
        match self {
            RefineError::BudgetExceeded { origin, splits, cap, .. } => RefineError::BudgetExceeded { origin, splits, cap, run: Some(Box::new(run)) },
            e => e,
        }
    }
}

/// Interval endpoints as poses with the flown arc length.
pub fn interval_query(traj: &NodeTrajectory, mesh: &Mesh, j: usize, problem: &ProblemDef) -> EnvelopeQuery<f64> {
    let pose = |z: &[f64; 3]| OrientedPoint::new(z[0], z[1], z[2]);
    EnvelopeQuery::new(pose(&traj.states[j]), pose(&traj.states[j + 1]), problem.v * traj.interval_duration(mesh, j), problem.kappa_max())
}

/// Split bookkeeping against the initial mesh. Every split halves an interval,
/// so the depth of an interval follows from its width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineBudget {
    pub initial: Mesh,
}

impl RefineBudget {
    pub fn new(initial: Mesh) -> Self {
        Self { initial }
    }

    /// Initial interval containing `[a, b]`.
    pub fn origin(&self, a: f64, b: f64) -> usize {
        self.initial.locate(0.5 * (a + b))
    }

    pub fn depth(&self, a: f64, b: f64) -> u32 {
        let o = self.origin(a, b);
        (self.initial.dtau(o) / (b - a)).log2().round().max(0.0) as u32
    }

    /// `ceil(log2(V Δt / ε))` for an initial interval at final time span `sigma`.
    pub fn cap(&self, origin: usize, sigma: f64, problem: &ProblemDef) -> u32 {
        let dt = sigma * self.initial.dtau(origin) / 2.0;
        (problem.v * dt / problem.epsilon).log2().ceil().max(0.0) as u32
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalReport {
    pub interval: usize,
    pub patches: usize,
    pub infeasible: Option<InfeasibleReason>,
    pub intrusions: Vec<IntrusionReport>,
    pub split: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinePass {
    pub intervals_checked: usize,
    pub intervals_split: Vec<usize>,
    pub new_mesh: Mesh,
    /// Intervals that produced an intrusion or an infeasible query.
    pub reports: Vec<IntervalReport>,
}

/// Patches of one interval, or the reason the query has no curves.
pub fn interval_patches(query: &EnvelopeQuery<f64>) -> Result<Result<Vec<RectPatch<f64>>, InfeasibleReason>, EnvelopeError> {
    match build_patches_with(query, &EnvelopeOptions::default()) {
        Ok(p) => Ok(Ok(p)),
        Err(EnvelopeError::InfeasibleQuery { reason, .. }) => Ok(Err(reason)),
        Err(e) => Err(e),
    }
}

/// Largest nonlinear trapezoid defect per state component.
pub fn max_defects(traj: &NodeTrajectory, mesh: &Mesh, problem: &ProblemDef) -> [f64; 3] {
    let d = trapezoid_defects(traj, mesh, |z, u| problem.dynamics(z, u)).unwrap_or_default();
    d.iter().fold([0.0; 3], |acc, v| [0, 1, 2].map(|c| acc[c].max(v[c].abs())))
}

/// Which verdicts split an interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitPolicy {
    /// Intrusions and infeasible queries both split.
    Full,
    /// Only intrusions split; infeasible queries are reported but kept.
    IntrusionOnly,
}

pub fn refine_pass(traj: &NodeTrajectory, mesh: &Mesh, problem: &ProblemDef, budget: &RefineBudget) -> Result<RefinePass, RefineError> {
    refine_pass_with(traj, mesh, problem, budget, SplitPolicy::Full)
}

pub fn refine_pass_with(traj: &NodeTrajectory, mesh: &Mesh, problem: &ProblemDef, budget: &RefineBudget, policy: SplitPolicy) -> Result<RefinePass, RefineError> {
    let expanded = problem.expanded_nfz();
    let mut reports = Vec::new();
    let mut split = Vec::new();
    for j in 0..mesh.intervals() {
        let q = interval_query(traj, mesh, j, problem);
        let dmin = q.dubins_min();
        let realizable = q.arc_length >= dmin && q.arc_length < dmin + std::f64::consts::TAU * q.radius();
        if !realizable && policy == SplitPolicy::IntrusionOnly {
            let reason = if q.arc_length < dmin { InfeasibleReason::TooShort } else { InfeasibleReason::TooLong };
            reports.push(IntervalReport { interval: j, patches: 0, infeasible: Some(reason), intrusions: Vec::new(), split: false });
            continue;
        }
        // every curve lies in the ellipse |p - s| + |p - e| ≤ ℓ; any rotated
        // bounding box of it lies in the disc of radius sqrt(a² + b²) about its center
        let (s0, e0) = (q.start.pos(), q.end.pos());
        let mid = (s0 + e0) * 0.5;
        let a = 0.5 * q.arc_length;
        let b2 = (a * a - 0.25 * (e0 - s0).norm().powi(2)).max(0.0);
        let reach = (a * a + b2).sqrt() * (1.0 + 1e-3);
        let near: Vec<usize> = (0..expanded.len()).filter(|&i| problem.nfz[i].clearance(mid) < reach).collect();
        if near.is_empty() && realizable {
            continue;
        }
        let mut rep = IntervalReport { interval: j, patches: 0, infeasible: None, intrusions: Vec::new(), split: false };
        match interval_patches(&q).map_err(RefineError::Envelope)? {
            Err(reason) => {
                rep.infeasible = Some(reason);
                rep.split = policy == SplitPolicy::Full;
            }
            Ok(patches) => {
                rep.patches = patches.len();
                for (pi, p) in patches.iter().enumerate() {
                    for &ci in &near {
                        let depth = circle_patch_depth(p, &expanded[ci]);
                        if depth > 0.0 {
                            let exceeded = depth > problem.epsilon;
                            rep.split |= exceeded;
                            rep.intrusions.push(IntrusionReport { patch_id: pi, region_id: ci, depth, exceeded });
                        }
                    }
                }
            }
        }
        // an interval no longer than ε keeps its patches within ε of the nodes
        if q.arc_length <= problem.epsilon {
            rep.split = false;
        }
        if rep.split {
            let (a, b) = (mesh.tau()[j], mesh.tau()[j + 1]);
            let origin = budget.origin(a, b);
            let splits = budget.depth(a, b) + 1;
            let cap = budget.cap(origin, traj.tf - traj.t0, problem);
            if splits > cap {
                return Err(RefineError::BudgetExceeded { origin, splits, cap, run: None });
            }
            split.push(j);
        }
        if rep.split || rep.infeasible.is_some() || !rep.intrusions.is_empty() {
            reports.push(rep);
        }
    }
    Ok(RefinePass { intervals_checked: mesh.intervals(), new_mesh: mesh.with_midpoints(&split), intervals_split: split, reports })
}

/// Refinement hook for the SCP loop. Infeasible queries split only once the
/// iterate's nonlinear defects are within `consistency`.
pub struct EnvelopeRefiner {
    pub budget: RefineBudget,
    pub consistency: [f64; 3],
    pub passes: Vec<RefinePass>,
}

impl EnvelopeRefiner {
    pub fn new(initial: Mesh, consistency: [f64; 3]) -> Self {
        Self { budget: RefineBudget::new(initial), consistency, passes: Vec::new() }
    }
}

impl RefineHook for EnvelopeRefiner {
    fn refine(&mut self, problem: &ProblemDef, traj: &NodeTrajectory, mesh: &Mesh) -> Result<Option<HookOutcome>, RefineError> {
        let d = max_defects(traj, mesh, problem);
        let policy = if (0..3).all(|c| d[c] <= self.consistency[c]) { SplitPolicy::Full } else { SplitPolicy::IntrusionOnly };
        let pass = refine_pass_with(traj, mesh, problem, &self.budget, policy)?;
        let out = if pass.intervals_split.is_empty() { None } else { Some(HookOutcome { mesh: pass.new_mesh.clone(), splits: pass.intervals_split.clone() }) };
        self.passes.push(pass);
        Ok(out)
    }
}

/// Refinement interleaved with every SCP iteration.
pub fn run_algorithm2(problem: &ProblemDef, mesh: Mesh, guess: NodeTrajectory, opts: &ScpOptions) -> Result<(ScpRun, Vec<RefinePass>), ScpError> {
    let mut hook = EnvelopeRefiner::new(mesh.clone(), opts.eps_conv);
    let run = scp_loop(problem, mesh, guess, opts, &mut hook)?;
    Ok((run, hook.passes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuterLoop {
    pub scp_iterations: usize,
    pub mesh_size: usize,
    pub splits: Vec<usize>,
    pub refine_ms: f64,
}

/// Solve to convergence, refine, repeat until no interval is split.
pub fn run_algorithm1(problem: &ProblemDef, mesh: Mesh, guess: NodeTrajectory, opts: &ScpOptions, max_outer: usize) -> Result<(ScpRun, Vec<OuterLoop>), ScpError> {
    let budget = RefineBudget::new(mesh.clone());
    let (mut mesh, mut guess) = (mesh, guess);
    let mut loops = Vec::new();
    let mut history = Vec::new();
    for _ in 0..max_outer {
        let mut run = scp_loop(problem, mesh, guess, opts, &mut NoRefine)?;
        let offset = history.len();
        history.extend(run.history.drain(..).map(|mut it| {
            it.iteration += offset;
            it
        }));
        let t = std::time::Instant::now();
        let pass = match refine_pass(&run.traj, &run.mesh, problem, &budget) {
            Ok(p) => p,
            Err(e) => {
                run.history = history;
                return Err(ScpError::Refine(e.with_run(run)));
            }
        };
        let refine_ms = t.elapsed().as_secs_f64() * 1e3;
        loops.push(OuterLoop { scp_iterations: history.len() - offset, mesh_size: run.mesh.len(), splits: pass.intervals_split.clone(), refine_ms });
        if pass.intervals_split.is_empty() {
            run.history = history;
            return Ok((run, loops));
        }
        guess = interpolate_onto(&run.traj, &run.mesh, &pass.new_mesh);
        mesh = pass.new_mesh;
    }
    let traj = guess;
    Err(ScpError::MaxIterationExceeded(Box::new(ScpRun { history, traj, mesh, converged: false })))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision::ForbiddenCircle;
    use crate::oracle::propagate_dense;

    const U: f64 = 3.0;

    /// Nodes of a constant-turn flight, exact for the dynamics.
    fn arc(mesh: &Mesh, p: &ProblemDef, tf: f64) -> NodeTrajectory {
        let w = U / p.v;
        let r = p.v / w;
        let states = mesh
            .tau()
            .iter()
            .map(|&tau| {
                let t = (tau + 1.0) * tf / 2.0;
                [r * (w * t).sin(), r * (1.0 - (w * t).cos()), w * t]
            })
            .collect();
        NodeTrajectory { states, controls: vec![U; mesh.len()], t0: 0.0, tf }
    }

    fn open_problem() -> ProblemDef {
        let mut p = ProblemDef::table1();
        p.nfz = vec![ForbiddenCircle::new((-60e3, -60e3), 1000.0)];
        p
    }

    #[test]
    fn table1_interval_query() {
        let p = ProblemDef::table1();
        let m = Mesh::uniform(10);
        let q = interval_query(&p.linear_guess(&m), &m, 3, &p);
        assert!((q.kappa_max - 1.0 / 900.0).abs() < 1e-15);
        assert!((q.arc_length - 10_000.0).abs() < 1e-9);
    }

    #[test]
    fn clear_flight_needs_no_split() {
        let p = open_problem();
        let m = Mesh::uniform(10);
        let pass = refine_pass(&arc(&m, &p, 300.0), &m, &p, &RefineBudget::new(m.clone())).unwrap();
        assert!(pass.intervals_split.is_empty());
        assert!(pass.reports.is_empty());
        assert_eq!(pass.new_mesh, m);
        assert_eq!(pass.intervals_checked, 9);
    }

    #[test]
    fn small_region_between_nodes_is_split() {
        let mut p = open_problem();
        let m = Mesh::uniform(10);
        let traj = arc(&m, &p, 300.0);
        // on the flown arc halfway through interval 4, away from both nodes
        let t: f64 = 150.0;
        let (w, r) = (U / p.v, p.v * p.v / U);
        p.nfz.push(ForbiddenCircle::new((r * (w * t).sin(), r * (1.0 - (w * t).cos())), 200.0));
        for z in &traj.states {
            assert!(p.nfz[1].clearance(crate::dubins::Vec2::new(z[0], z[1])) > 3000.0);
        }
        let pass = refine_pass(&traj, &m, &p, &RefineBudget::new(m.clone())).unwrap();
        assert_eq!(pass.intervals_split, vec![4]);
        let rep = &pass.reports[0];
        assert!(rep.intrusions.iter().any(|i| i.region_id == 1 && i.exceeded));
        assert!(propagate_dense(&traj, &m, &p, 200).min_clearance[1] < -100.0);
        // the new node sits at the midpoint and nothing is removed
        let tau = pass.new_mesh.tau();
        assert_eq!(tau.len(), 11);
        assert!(m.tau().iter().all(|a| tau.contains(a)));
        assert!(tau.contains(&(0.5 * (m.tau()[4] + m.tau()[5]))));
    }

    #[test]
    fn too_short_interval_split_depends_on_policy() {
        let p = open_problem();
        let m = Mesh::uniform(10);
        let mut traj = arc(&m, &p, 300.0);
        // move one node forward so its interval is shorter than the chord
        traj.states[6] = arc(&Mesh::new(vec![-1.0, m.tau()[6] + 0.05, 1.0]).unwrap(), &p, 300.0).states[1];
        let b = RefineBudget::new(m.clone());
        let full = refine_pass_with(&traj, &m, &p, &b, SplitPolicy::Full).unwrap();
        assert_eq!(full.intervals_split, vec![5]);
        assert_eq!(full.reports[0].infeasible, Some(InfeasibleReason::TooShort));
        let lenient = refine_pass_with(&traj, &m, &p, &b, SplitPolicy::IntrusionOnly).unwrap();
        assert!(lenient.intervals_split.is_empty());
        assert_eq!(lenient.reports.len(), full.reports.len());
        assert!(lenient.reports.iter().all(|r| !r.split));
    }

    #[test]
    fn intervals_within_epsilon_are_never_split() {
        let mut p = open_problem();
        let m = Mesh::uniform(10);
        let mut traj = arc(&m, &p, 300.0);
        traj.states[6][0] += 2000.0;
        p.epsilon = 20_000.0;
        let pass = refine_pass(&traj, &m, &p, &RefineBudget::new(m.clone())).unwrap();
        assert!(pass.intervals_split.is_empty());
        assert!(!pass.reports.is_empty());
    }

    #[test]
    fn budget_depth_and_cap() {
        let p = ProblemDef::table1();
        let b = RefineBudget::new(Mesh::uniform(10));
        let w = 2.0 / 9.0;
        assert_eq!(b.depth(-1.0, -1.0 + w), 0);
        assert_eq!(b.depth(-1.0 + w, -1.0 + 1.25 * w), 2);
        assert_eq!(b.origin(-1.0 + w, -1.0 + 1.25 * w), 1);
        // V Δt = 300 * 300 / 9 = 10 km, ε = 50 m: log2(200) = 7.64
        assert_eq!(b.cap(0, 300.0, &p), 8);
    }

    #[test]
    fn off_grid_split_beyond_cap_is_refused() {
        let mut p = open_problem();
        let mesh = Mesh::new(vec![-1.0, -1.0 + 2f64.powf(-1.51), 1.0]).unwrap();
        let mut traj = arc(&mesh, &p, 100.0);
        // V σ = 30 km on the single initial interval; put log2(ℓ0/ε) at 2.8
        p.epsilon = 30_000.0 / 2f64.powf(2.8);
        traj.states[1] = arc(&Mesh::new(vec![-1.0, -0.5, 1.0]).unwrap(), &p, 100.0).states[1];
        let b = RefineBudget::new(Mesh::uniform(2));
        match refine_pass(&traj, &mesh, &p, &b) {
            Err(RefineError::BudgetExceeded { origin: 0, splits: 4, cap: 3, run: None }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn passes_are_deterministic() {
        let p = ProblemDef::table1();
        let m = Mesh::uniform(12);
        let g = p.linear_guess(&m);
        let b = RefineBudget::new(m.clone());
        let a = refine_pass(&g, &m, &p, &b).unwrap();
        assert_eq!(a, refine_pass(&g, &m, &p, &b).unwrap());
        assert!(!a.reports.is_empty());
    }

    #[test]
    fn outer_loop_without_regions_stops_at_once() {
        let mut p = ProblemDef::table1();
        p.nfz.clear();
        let m = Mesh::uniform(10);
        let (run, loops) = run_algorithm1(&p, m.clone(), p.linear_guess(&m), &ScpOptions::default(), 5).unwrap();
        assert_eq!(loops.len(), 1);
        assert!(loops[0].splits.is_empty());
        assert_eq!(run.mesh, m);
        assert!(run.converged);
    }
}
