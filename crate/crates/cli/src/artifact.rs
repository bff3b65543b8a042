//! Run artifacts: everything a solve produced, in one JSON document.

use std::io::Write;
use std::path::Path;

use reachmesh::collision::{circle_patch_depth, IntrusionReport};
use reachmesh::envelope::{InfeasibleReason, RectPatch};
use reachmesh::qp::QpStatus;
use reachmesh::refine::{interval_patches, interval_query, OuterLoop, RefineError};
use reachmesh::scp::{ScpError, ScpIterate, ScpOptions, ScpRun};
use reachmesh::transcription::{Mesh, NodeTrajectory, ProblemDef};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Refinement after every SCP iteration.
    Refined,
    /// Solve to convergence, refine, repeat.
    OuterLoop,
    /// SCP on the initial mesh only.
    Plain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Termination {
    Converged,
    NonConverged { reason: String },
    BudgetExceeded { origin: usize, splits: u32, cap: u32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationTiming {
    pub subproblem_ms: f64,
    pub refine_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Mesh the subproblem was solved on.
    pub mesh: Vec<f64>,
    pub tf: f64,
    pub step: [f64; 3],
    pub step_sigma: f64,
    pub metric: f64,
    pub max_slack: f64,
    pub max_virtual: f64,
    pub cost: f64,
    pub qp_status: QpStatus,
    pub qp_iterations: u32,
    pub splits: Vec<usize>,
    pub timing: IterationTiming,
}

impl From<&ScpIterate> for IterationRecord {
    fn from(it: &ScpIterate) -> Self {
        Self {
            iteration: it.iteration,
            mesh: it.mesh.tau().to_vec(),
            tf: it.traj.tf,
            step: it.step,
            step_sigma: it.step_sigma,
            metric: it.metric,
            max_slack: it.max_slack,
            max_virtual: it.max_virtual,
            cost: it.cost,
            qp_status: it.qp_status,
            qp_iterations: it.qp_iterations,
            splits: it.splits.clone(),
            timing: IterationTiming { subproblem_ms: it.subproblem_ms, refine_ms: it.refine_ms },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuterTiming {
    pub refine_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub scp_iterations: usize,
    pub mesh_size: usize,
    pub splits: Vec<usize>,
    pub timing: OuterTiming,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub gamma: f64,
    pub u: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchRecord {
    pub patch: RectPatch<f64>,
    pub world_corners: [[f64; 2]; 4],
}

impl From<&RectPatch<f64>> for PatchRecord {
    fn from(p: &RectPatch<f64>) -> Self {
        Self { patch: p.clone(), world_corners: p.world_corners().map(|c| [c.x, c.y]) }
    }
}

/// Envelope check of one interval of the final trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalRecord {
    pub interval: usize,
    pub start: [f64; 3],
    pub end: [f64; 3],
    pub length: f64,
    pub kappa: f64,
    pub dubins_min: f64,
    pub patches: Vec<PatchRecord>,
    pub infeasible: Option<InfeasibleReason>,
    /// Every patch that touches an expanded region.
    pub intrusions: Vec<IntrusionReport>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub mean_subproblem_ms: f64,
    pub max_subproblem_ms: f64,
    pub mean_refine_ms: f64,
    pub max_refine_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub schema_version: u32,
    pub mode: Mode,
    /// Seed for every randomized step downstream of the solve.
    pub seed: u64,
    pub problem: ProblemDef,
    pub options: ScpOptions,
    pub termination: Termination,
    pub iterations: Vec<IterationRecord>,
    pub outer_loops: Vec<OuterRecord>,
    pub final_mesh: Vec<f64>,
    pub final_trajectory: Vec<NodeRecord>,
    pub intervals: Vec<IntervalRecord>,
    pub timing: TimingSummary,
}

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error("schema version {0}, expected {SCHEMA_VERSION}")]
    Version(u32),
    #[error("inconsistent artifact: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-interval envelope records of a trajectory.
pub fn interval_records(traj: &NodeTrajectory, mesh: &Mesh, problem: &ProblemDef) -> Vec<IntervalRecord> {
    let expanded = problem.expanded_nfz();
    (0..mesh.intervals())
        .map(|j| {
            let q = interval_query(traj, mesh, j, problem);
            let mut rec = IntervalRecord {
                interval: j,
                start: traj.states[j],
                end: traj.states[j + 1],
                length: q.arc_length,
                kappa: q.kappa_max,
                dubins_min: q.dubins_min(),
                patches: Vec::new(),
                infeasible: None,
                intrusions: Vec::new(),
            };
            match interval_patches(&q) {
                Ok(Ok(patches)) => {
                    for (pi, p) in patches.iter().enumerate() {
                        for (ci, c) in expanded.iter().enumerate() {
                            let depth = circle_patch_depth(p, c);
                            if depth > 0.0 {
                                rec.intrusions.push(IntrusionReport { patch_id: pi, region_id: ci, depth, exceeded: depth > problem.epsilon });
                            }
                        }
                    }
                    rec.patches = patches.iter().map(PatchRecord::from).collect();
                }
                Ok(Err(reason)) => rec.infeasible = Some(reason),
                Err(_) => rec.infeasible = Some(InfeasibleReason::Unrealizable),
            }
            rec
        })
        .collect()
}

fn summary(its: &[IterationRecord]) -> TimingSummary {
    if its.is_empty() {
        return TimingSummary::default();
    }
    let n = its.len() as f64;
    TimingSummary {
        mean_subproblem_ms: its.iter().map(|i| i.timing.subproblem_ms).sum::<f64>() / n,
        max_subproblem_ms: its.iter().map(|i| i.timing.subproblem_ms).fold(0.0, f64::max),
        mean_refine_ms: its.iter().map(|i| i.timing.refine_ms).sum::<f64>() / n,
        max_refine_ms: its.iter().map(|i| i.timing.refine_ms).fold(0.0, f64::max),
    }
}

impl RunArtifact {
    /// Artifact of a finished or failed run. Errors without a partial run give `None`.
    pub fn from_outcome(
        mode: Mode,
        seed: u64,
        problem: &ProblemDef,
        options: &ScpOptions,
        outcome: &Result<(ScpRun, Vec<OuterLoop>), ScpError>,
    ) -> Option<Self> {
        let (run, loops, termination) = match outcome {
            Ok((run, loops)) => (run, loops.as_slice(), Termination::Converged),
            Err(e) => {
                let t = match e {
                    ScpError::Refine(RefineError::BudgetExceeded { origin, splits, cap, .. }) => Termination::BudgetExceeded { origin: *origin, splits: *splits, cap: *cap },
                    e => Termination::NonConverged { reason: e.to_string() },
                };
                (e.run()?, &[][..], t)
            }
        };
        let iterations: Vec<IterationRecord> = run.history.iter().map(IterationRecord::from).collect();
        let times = run.traj.times(&run.mesh);
        let final_trajectory = (0..run.mesh.len())
            .map(|j| {
                let z = run.traj.states[j];
                NodeRecord { t: times[j], x: z[0], y: z[1], gamma: z[2], u: run.traj.controls[j] }
            })
            .collect();
        Some(Self {
            schema_version: SCHEMA_VERSION,
            mode,
            seed,
            problem: problem.clone(),
            options: options.clone(),
            termination,
            timing: summary(&iterations),
            iterations,
            outer_loops: loops
                .iter()
                .map(|l| OuterRecord { scp_iterations: l.scp_iterations, mesh_size: l.mesh_size, splits: l.splits.clone(), timing: OuterTiming { refine_ms: l.refine_ms } })
                .collect(),
            final_mesh: run.mesh.tau().to_vec(),
            final_trajectory,
            intervals: interval_records(&run.traj, &run.mesh, problem),
        })
    }

    pub fn mesh(&self) -> Result<Mesh, ArtifactError> {
        Mesh::new(self.final_mesh.clone()).map_err(|e| ArtifactError::Inconsistent(e.to_string()))
    }

    pub fn trajectory(&self) -> NodeTrajectory {
        let n = &self.final_trajectory;
        NodeTrajectory {
            states: n.iter().map(|r| [r.x, r.y, r.gamma]).collect(),
            controls: n.iter().map(|r| r.u).collect(),
            t0: n.first().map_or(0.0, |r| r.t),
            tf: n.last().map_or(0.0, |r| r.t),
        }
    }

    pub fn check(&self) -> Result<(), ArtifactError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ArtifactError::Version(self.schema_version));
        }
        let n = self.final_mesh.len();
        if self.final_trajectory.len() != n {
            return Err(ArtifactError::Inconsistent(format!("{} nodes on a {n}-node mesh", self.final_trajectory.len())));
        }
        if self.intervals.len() + 1 != n {
            return Err(ArtifactError::Inconsistent(format!("{} interval records on a {n}-node mesh", self.intervals.len())));
        }
        if self.intervals.iter().enumerate().any(|(j, r)| r.interval != j) {
            return Err(ArtifactError::Inconsistent("interval records out of order".into()));
        }
        self.mesh()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, ArtifactError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn read(path: &Path) -> Result<Self, ArtifactError> {
        let a: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        a.check()?;
        Ok(a)
    }

    /// Writes the JSON artifact and the trajectory CSV beside it.
    pub fn write(&self, path: &Path) -> Result<(), ArtifactError> {
        write_atomic(path, self.to_json()?.as_bytes())?;
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.final_trajectory {
            w.serialize(r).map_err(|e| ArtifactError::Io(std::io::Error::other(e)))?;
        }
        let bytes = w.into_inner().map_err(|e| ArtifactError::Io(std::io::Error::other(e.to_string())))?;
        write_atomic(&path.with_extension("csv"), &bytes)?;
        Ok(())
    }
}

/// Temp file in the target directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut f = tempfile::NamedTempFile::new_in(dir)?;
    f.write_all(bytes)?;
    f.as_file().sync_all()?;
    f.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Drops every `timing` member so runs can be compared byte for byte.
pub fn strip_timing(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(m) => {
            m.remove("timing");
            m.values_mut().for_each(strip_timing);
        }
        serde_json::Value::Array(a) => a.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use reachmesh::scp::{scp_loop, NoRefine};

    fn small_run() -> RunArtifact {
        let mut p = ProblemDef::table1();
        p.nfz.truncate(2);
        let m = Mesh::uniform(6);
        let opts = ScpOptions::default();
        let out = scp_loop(&p, m.clone(), p.linear_guess(&m), &opts, &mut NoRefine).map(|r| (r, Vec::new()));
        RunArtifact::from_outcome(Mode::Plain, 7, &p, &opts, &out).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let a = small_run();
        a.check().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        a.write(&path).unwrap();
        let b = RunArtifact::read(&path).unwrap();
        assert_eq!(a, b);
        let csv = std::fs::read_to_string(path.with_extension("csv")).unwrap();
        assert!(csv.starts_with("t,x,y,gamma,u\n"));
        assert_eq!(csv.lines().count(), a.final_mesh.len() + 1);
    }

    #[test]
    fn timing_is_the_only_difference_between_runs() {
        let mut a = serde_json::to_value(small_run()).unwrap();
        let mut b = serde_json::to_value(small_run()).unwrap();
        strip_timing(&mut a);
        strip_timing(&mut b);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(a.get("timing").is_none());
        assert!(a["iterations"][0].get("timing").is_none());
    }

    #[test]
    fn inconsistent_lengths_are_rejected() {
        let mut a = small_run();
        a.final_trajectory.pop();
        assert!(matches!(a.check(), Err(ArtifactError::Inconsistent(_))));
        let mut a = small_run();
        a.schema_version = 99;
        assert!(matches!(a.check(), Err(ArtifactError::Version(99))));
    }
}
