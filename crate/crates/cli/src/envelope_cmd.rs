//! Patch output for a single envelope query.

use reachmesh::dubins::RigidMotion;
use reachmesh::envelope::{build_patches, EnvelopeError, EnvelopeQuery, Scenario};
use reachmesh::envelope::BoundSource;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchOut {
    pub scenario: String,
    /// x_min, x_max, y_min, y_max in the canonical frame.
    pub canonical: [f64; 4],
    pub canonical_corners: [[f64; 2]; 4],
    pub world_corners: [[f64; 2]; 4],
    pub bound_sources: [BoundSource; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeOut {
    pub query: EnvelopeQuery<f64>,
    pub dubins_min: f64,
    pub to_world: Option<RigidMotion<f64>>,
    pub patches: Vec<PatchOut>,
}

pub fn envelope(query: &EnvelopeQuery<f64>) -> Result<EnvelopeOut, EnvelopeError> {
    let patches = build_patches(query)?;
    Ok(EnvelopeOut {
        query: *query,
        dubins_min: query.dubins_min(),
        to_world: patches.first().map(|p| p.to_world),
        patches: patches
            .iter()
            .map(|p| PatchOut {
                scenario: Scenario::name(&p.scenario),
                canonical: [p.x_min, p.x_max, p.y_min, p.y_max],
                canonical_corners: [[p.x_min, p.y_min], [p.x_max, p.y_min], [p.x_max, p.y_max], [p.x_min, p.y_max]],
                world_corners: p.world_corners().map(|c| [c.x, c.y]),
                bound_sources: p.bound_sources,
            })
            .collect(),
    })
}
