//! Patch-versus-forbidden-region tests.

use serde::{Deserialize, Serialize};

use crate::dubins::Vec2;
use crate::envelope::RectPatch;
use crate::scalar::Scalar;

/// Disc the vehicle must stay out of.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForbiddenCircle<T> {
    pub center: (T, T),
    pub radius: T,
}

impl<T: Scalar> ForbiddenCircle<T> {
    pub fn new(center: (T, T), radius: T) -> Self {
        Self { center, radius }
    }

    pub fn center(&self) -> Vec2<T> {
        Vec2::new(self.center.0, self.center.1)
    }

    /// The same circle grown by `eps`.
    pub fn expanded(&self, eps: T) -> Self {
        Self { center: self.center, radius: self.radius + eps }
    }

    /// Signed distance from the boundary, negative inside.
    pub fn clearance(&self, p: Vec2<T>) -> T {
        (p - self.center()).norm() - self.radius
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntrusionReport {
    pub patch_id: usize,
    pub region_id: usize,
    /// Penetration depth, 0 when disjoint.
    pub depth: f64,
    pub exceeded: bool,
}

/// Distance from a world point to the rotated rectangle (0 inside).
pub fn point_patch_distance<T: Scalar>(patch: &RectPatch<T>, p: Vec2<T>) -> T {
    let q = patch.to_world.inverse().apply(p);
    let dx = (patch.x_min - q.x).max(q.x - patch.x_max).max(T::zero());
    let dy = (patch.y_min - q.y).max(q.y - patch.y_max).max(T::zero());
    (dx * dx + dy * dy).sqrt()
}

/// Deepest penetration of the patch into the disc: `max(0, radius - d)` with `d`
/// the distance from the center to the rectangle.
pub fn circle_patch_depth<T: Scalar>(patch: &RectPatch<T>, circle: &ForbiddenCircle<T>) -> T {
    (circle.radius - point_patch_distance(patch, circle.center())).max(T::zero())
}

/// Whether every corner satisfies `h >= 0`. For concave `h` this certifies the whole patch.
pub fn vertex_feasibility<T: Scalar, H: Fn(Vec2<T>) -> T>(patch: &RectPatch<T>, h: H) -> bool {
    patch.world_corners().iter().all(|&c| h(c) >= T::zero())
}

/// One report per (patch, circle) pair that touches.
pub fn intrusion_reports<T: Scalar>(patches: &[RectPatch<T>], circles: &[ForbiddenCircle<T>], eps: T) -> Vec<IntrusionReport> {
    let mut out = Vec::new();
    for (pi, p) in patches.iter().enumerate() {
        for (ci, c) in circles.iter().enumerate() {
            let depth = circle_patch_depth(p, c);
            if depth > T::zero() {
                out.push(IntrusionReport { patch_id: pi, region_id: ci, depth: depth.to_f64().unwrap_or(f64::NAN), exceeded: depth > eps });
            }
        }
    }
    out
}
