//! Independent audit of a run artifact.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use reachmesh::collision::circle_patch_depth;
use reachmesh::dubins::OrientedPoint;
use reachmesh::envelope::{EnvelopeQuery, RectPatch};
use reachmesh::oracle::{audit_patch_cover, propagate_dense, sample_feasible_curves, SamplerOptions};
use serde::{Deserialize, Serialize};

use crate::artifact::{ArtifactError, RunArtifact};

/// RK4 steps per interval for the clearance check.
pub const DENSE_STEPS: usize = 400;
/// Patch growth allowed in the cover audit, relative to the interval length.
pub const COVER_PAD: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverViolation {
    pub interval: usize,
    pub points: usize,
    pub worst_distance: f64,
    pub worst_point: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthViolation {
    pub interval: usize,
    pub patch: usize,
    pub region: usize,
    pub depth: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub samples_per_interval: usize,
    pub intervals_audited: usize,
    /// Intervals without patches or without sampled curves.
    pub intervals_unaudited: Vec<usize>,
    pub curves_checked: usize,
    pub cover_violations: Vec<CoverViolation>,
    pub depth_violations: Vec<DepthViolation>,
    /// Smallest distance to each original region along the integrated path.
    pub clearance: Vec<f64>,
    pub clearance_violations: Vec<usize>,
    pub max_node_gap: f64,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.cover_violations.is_empty() && self.depth_violations.is_empty() && self.clearance_violations.is_empty()
    }
}

/// Patch cover audit per interval (skipped when `samples == 0`), patch depth
/// against the expanded regions, and dense propagation of the final trajectory.
pub fn verify(art: &RunArtifact, samples: usize) -> Result<VerifyReport, ArtifactError> {
    art.check()?;
    let p = &art.problem;
    let mesh = art.mesh()?;
    let traj = art.trajectory();
    let mut rep = VerifyReport {
        samples_per_interval: samples,
        intervals_audited: 0,
        intervals_unaudited: Vec::new(),
        curves_checked: 0,
        cover_violations: Vec::new(),
        depth_violations: Vec::new(),
        clearance: Vec::new(),
        clearance_violations: Vec::new(),
        max_node_gap: 0.0,
    };
    if samples > 0 {
        let expanded = p.expanded_nfz();
        for rec in &art.intervals {
            let patches: Vec<RectPatch<f64>> = rec.patches.iter().map(|r| r.patch.clone()).collect();
            for (pi, patch) in patches.iter().enumerate() {
                for (ci, c) in expanded.iter().enumerate() {
                    let depth = circle_patch_depth(patch, c);
                    if depth > p.epsilon {
                        rep.depth_violations.push(DepthViolation { interval: rec.interval, patch: pi, region: ci, depth });
                    }
                }
            }
            if patches.is_empty() {
                rep.intervals_unaudited.push(rec.interval);
                continue;
            }
            let pose = |z: [f64; 3]| OrientedPoint::new(z[0], z[1], z[2]);
            let q = EnvelopeQuery::new(pose(rec.start), pose(rec.end), rec.length, rec.kappa);
            let mut rng = ChaCha8Rng::seed_from_u64(art.seed ^ (rec.interval as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let curves = match sample_feasible_curves(&q, samples, (1e-9, 1e-9), &SamplerOptions::default(), &mut rng) {
                Ok(c) if !c.is_empty() => c,
                _ => {
                    rep.intervals_unaudited.push(rec.interval);
                    continue;
                }
            };
            rep.intervals_audited += 1;
            rep.curves_checked += curves.len();
            let audit = audit_patch_cover(&q, &patches, &curves, COVER_PAD);
            if audit.violations > 0 {
                rep.cover_violations.push(CoverViolation {
                    interval: rec.interval,
                    points: audit.violations,
                    worst_distance: audit.worst_distance,
                    worst_point: audit.worst_point,
                });
            }
        }
    }
    let dense = propagate_dense(&traj, &mesh, p, DENSE_STEPS);
    rep.clearance_violations = (0..dense.min_clearance.len()).filter(|&i| dense.min_clearance[i] < 0.0).collect();
    rep.clearance = dense.min_clearance;
    rep.max_node_gap = dense.max_node_gap;
    Ok(rep)
}
