//! Trapezoidal collocation of the free-final-time UAV problem.

use serde::{Deserialize, Serialize};

use crate::collision::ForbiddenCircle;

/// (x [m], y [m], flight-path angle [rad]).
pub type State = [f64; 3];

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum TranscriptionError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid mesh: {0}")]
    InvalidMesh(&'static str),
}

/// Nodes in scaled time, strictly increasing from -1 to 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    tau: Vec<f64>,
}

impl Mesh {
    pub fn new(tau: Vec<f64>) -> Result<Self, TranscriptionError> {
        if tau.len() < 2 {
            return Err(TranscriptionError::InvalidMesh("need at least two nodes"));
        }
        if tau[0] != -1.0 || *tau.last().unwrap() != 1.0 {
            return Err(TranscriptionError::InvalidMesh("endpoints must be -1 and 1"));
        }
        if tau.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(TranscriptionError::InvalidMesh("nodes must be strictly increasing"));
        }
        Ok(Self { tau })
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n >= 2, "a mesh has at least two nodes");
        let mut tau: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect();
        tau[n - 1] = 1.0;
        Self { tau }
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    pub fn intervals(&self) -> usize {
        self.tau.len() - 1
    }

    pub fn dtau(&self, j: usize) -> f64 {
        self.tau[j + 1] - self.tau[j]
    }

    /// Quadrature weights of the trapezoid rule on the nodes.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let n = self.len();
        let mut w = vec![0.0; n];
        for j in 0..n - 1 {
            let h = self.dtau(j) / 2.0;
            w[j] += h;
            w[j + 1] += h;
        }
        w
    }

    /// The mesh with the midpoints of the listed intervals inserted.
    pub fn with_midpoints(&self, intervals: &[usize]) -> Self {
        let mut tau = self.tau.clone();
        for &j in intervals {
            tau.push(0.5 * (self.tau[j] + self.tau[j + 1]));
        }
        tau.sort_by(|a, b| a.partial_cmp(b).unwrap());
        tau.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
        Self { tau }
    }

    /// Index of the interval containing `t` (clamped to the mesh).
    pub fn locate(&self, t: f64) -> usize {
        match self.tau.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(i) => i.min(self.intervals() - 1),
            Err(0) => 0,
            Err(i) => (i - 1).min(self.intervals() - 1),
        }
    }
}

/// Node states and controls with the time span they map to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeTrajectory {
    pub states: Vec<State>,
    pub controls: Vec<f64>,
    pub t0: f64,
    pub tf: f64,
}

impl NodeTrajectory {
    pub fn check(&self, mesh: &Mesh) -> Result<(), TranscriptionError> {
        for got in [self.states.len(), self.controls.len()] {
            if got != mesh.len() {
                return Err(TranscriptionError::DimensionMismatch { expected: mesh.len(), got });
            }
        }
        Ok(())
    }

    pub fn time_at(&self, tau: f64) -> f64 {
        self.t0 + (self.tf - self.t0) * (tau + 1.0) / 2.0
    }

    /// Duration of interval `j`.
    pub fn interval_duration(&self, mesh: &Mesh, j: usize) -> f64 {
        (self.tf - self.t0) * mesh.dtau(j) / 2.0
    }

    pub fn times(&self, mesh: &Mesh) -> Vec<f64> {
        mesh.tau().iter().map(|&t| self.time_at(t)).collect()
    }
}

/// UAV problem data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemDef {
    /// Speed [m/s].
    pub v: f64,
    /// Lateral acceleration bound [m/s^2].
    pub u_max: f64,
    pub start: State,
    pub goal: State,
    pub nfz: Vec<ForbiddenCircle<f64>>,
    /// NFZ tolerance [m].
    pub epsilon: f64,
    /// Trust region on (x, y, gamma).
    pub eps_trc: [f64; 3],
    /// Trust region on the final time [s].
    pub sigma_trust: f64,
    pub tf_guess: f64,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("{field}: {message}")]
pub struct ProblemError {
    pub field: String,
    pub message: String,
}

impl ProblemDef {
    /// The bundled UAV scenario in SI units.
    pub fn table1() -> Self {
        let nfz = [((8.0, 30.0), 10.0), ((33.0, 30.0), 12.0), ((18.0, 7.0), 10.0), ((41.0, 41.0), 6.0), ((3.0, 8.0), 2.5), ((35.0, 15.0), 18.0)]
            .iter()
            .map(|&((x, y), r)| ForbiddenCircle::new((x * 1e3, y * 1e3), r * 1e3))
            .collect();
        Self {
            v: 300.0,
            u_max: 100.0,
            start: [0.0, 0.0, std::f64::consts::FRAC_PI_4],
            goal: [50e3, 50e3, std::f64::consts::FRAC_PI_2],
            nfz,
            epsilon: 50.0,
            eps_trc: [2000.0, 2000.0, 0.5],
            sigma_trust: 60.0,
            tf_guess: 300.0,
        }
    }

    /// Curvature bound of the path, `u_max / V^2`.
    pub fn kappa_max(&self) -> f64 {
        self.u_max / (self.v * self.v)
    }

    pub fn dynamics(&self, z: &State, u: f64) -> State {
        [self.v * z[2].cos(), self.v * z[2].sin(), u / self.v]
    }

    /// NFZs grown by the tolerance.
    pub fn expanded_nfz(&self) -> Vec<ForbiddenCircle<f64>> {
        self.nfz.iter().map(|c| c.expanded(self.epsilon)).collect()
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        let err = |field: &str, message: &str| Err(ProblemError { field: field.into(), message: message.into() });
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.v) {
            return err("V", "must be positive");
        }
        if !pos(self.u_max) {
            return err("u_max", "must be positive");
        }
        if !pos(self.tf_guess) {
            return err("tf_guess", "must be positive");
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return err("epsilon", "must be non-negative");
        }
        if !self.eps_trc.iter().all(|&v| pos(v)) {
            return err("eps_trc", "entries must be positive");
        }
        if !pos(self.sigma_trust) {
            return err("sigma_trust", "must be positive");
        }
        if !self.start.iter().chain(self.goal.iter()).all(|v| v.is_finite()) {
            return err("start/goal", "must be finite");
        }
        for (i, c) in self.nfz.iter().enumerate() {
            if !pos(c.radius) {
                return err(&format!("nfz[{i}].radius"), "must be positive");
            }
            if !(c.center.0.is_finite() && c.center.1.is_finite()) {
                return err(&format!("nfz[{i}].center"), "must be finite");
            }
            for (name, p) in [("start", self.start), ("goal", self.goal)] {
                let d = ((p[0] - c.center.0).powi(2) + (p[1] - c.center.1).powi(2)).sqrt();
                if d <= c.radius + self.epsilon {
                    return err(name, &format!("lies inside expanded nfz[{i}]"));
                }
            }
        }
        Ok(())
    }

    /// Straight-line interpolation between the boundary states with zero control.
    pub fn linear_guess(&self, mesh: &Mesh) -> NodeTrajectory {
        let states = mesh
            .tau()
            .iter()
            .map(|&t| {
                let s = (t + 1.0) / 2.0;
                [0, 1, 2].map(|k| self.start[k] + s * (self.goal[k] - self.start[k]))
            })
            .collect();
        NodeTrajectory { states, controls: vec![0.0; mesh.len()], t0: 0.0, tf: self.tf_guess }
    }
}

/// Defects `z[j+1] - z[j] - (tf - t0)/2 * dtau/2 * (f[j] + f[j+1])`.
pub fn trapezoid_defects<F: Fn(&State, f64) -> State>(traj: &NodeTrajectory, mesh: &Mesh, f: F) -> Result<Vec<State>, TranscriptionError> {
    traj.check(mesh)?;
    let half_span = (traj.tf - traj.t0) / 2.0;
    let fs: Vec<State> = traj.states.iter().zip(&traj.controls).map(|(z, &u)| f(z, u)).collect();
    Ok((0..mesh.intervals())
        .map(|j| {
            let h = half_span * mesh.dtau(j) / 2.0;
            [0, 1, 2].map(|k| traj.states[j + 1][k] - traj.states[j][k] - h * (fs[j][k] + fs[j + 1][k]))
        })
        .collect())
}

/// Trapezoid quadrature of the integral of `u^2` over time.
pub fn discrete_cost(traj: &NodeTrajectory, mesh: &Mesh) -> f64 {
    let half_span = (traj.tf - traj.t0) / 2.0;
    half_span * mesh.trapezoid_weights().iter().zip(&traj.controls).map(|(w, u)| w * u * u).sum::<f64>()
}

/// Piecewise-linear resampling in scaled time.
pub fn interpolate_onto(traj: &NodeTrajectory, old: &Mesh, new: &Mesh) -> NodeTrajectory {
    let mut states = Vec::with_capacity(new.len());
    let mut controls = Vec::with_capacity(new.len());
    for &t in new.tau() {
        let j = old.locate(t);
        let (a, b) = (old.tau()[j], old.tau()[j + 1]);
        let s = ((t - a) / (b - a)).clamp(0.0, 1.0);
        let lerp = |x: f64, y: f64| if s == 0.0 { x } else if s == 1.0 { y } else { x + s * (y - x) };
        states.push([0, 1, 2].map(|k| lerp(traj.states[j][k], traj.states[j + 1][k])));
        controls.push(lerp(traj.controls[j], traj.controls[j + 1]));
    }
    NodeTrajectory { states, controls, t0: traj.t0, tf: traj.tf }
}
