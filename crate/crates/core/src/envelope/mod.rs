//! Rectangular patch covers of the region swept by all curvature-bounded curves
//! of a prescribed length between two oriented points.

pub mod families;
pub mod length_eq;

use serde::{Deserialize, Serialize};

use crate::dubins::{dubins_distance, dubins_shortest_typed, Bounds, OrientedPoint, RigidMotion, Turn, Vec2, WordType};
use crate::scalar::Scalar;

pub use families::{BoundSource, CurveClass};
use families::{pieces_bounds, refine_traces, sweep_family, symmetric_candidates, trace_family, Accumulator, Ctx, Family, SweepOptions};
pub use length_eq::{
    length_eq_roots, solve_length_eq_opposite, solve_length_eq_same, Branch, LengthEqError, LengthEquationCase, Winding,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeQuery<T> {
    pub start: OrientedPoint<T>,
    pub end: OrientedPoint<T>,
    pub arc_length: T,
    pub kappa_max: T,
}

impl<T: Scalar> EnvelopeQuery<T> {
    pub fn new(start: OrientedPoint<T>, end: OrientedPoint<T>, arc_length: T, kappa_max: T) -> Self {
        Self { start, end, arc_length, kappa_max }
    }

    pub fn radius(&self) -> T {
        T::one() / self.kappa_max
    }

    pub fn dubins_min(&self) -> T {
        dubins_distance(&self.start, &self.end, self.kappa_max)
    }

    pub fn transformed(&self, m: &RigidMotion<T>) -> Self {
        Self { start: m.apply_pose(&self.start), end: m.apply_pose(&self.end), ..*self }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Scenario {
    pub departure: Turn,
    pub arrival: Turn,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario { departure: Turn::Left, arrival: Turn::Left },
        Scenario { departure: Turn::Left, arrival: Turn::Right },
        Scenario { departure: Turn::Right, arrival: Turn::Left },
        Scenario { departure: Turn::Right, arrival: Turn::Right },
    ];

    pub fn name(&self) -> String {
        format!("{}{}", self.departure.letter(), self.arrival.letter())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InfeasibleReason {
    /// Shorter than the shortest connecting path.
    TooShort,
    /// Long enough to admit a full loop.
    TooLong,
    /// Between the two bounds, but no loop-free curve has exactly this length.
    Unrealizable,
}

#[derive(Clone, Copy, Debug, PartialEq, thiserror::Error)]
pub enum EnvelopeError {
    #[error("infeasible query ({reason:?}): length {length}, shortest path {dubins_min}")]
    InfeasibleQuery { reason: InfeasibleReason, length: f64, dubins_min: f64 },
    #[error("left-circle centers coincide")]
    DegenerateFrame,
    #[error("invalid query: {0}")]
    Invalid(&'static str),
}

/// Axis-aligned rectangle in the canonical frame of its query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RectPatch<T> {
    pub x_min: T,
    pub x_max: T,
    pub y_min: T,
    pub y_max: T,
    pub to_world: RigidMotion<T>,
    pub scenario: Scenario,
    /// Sources of x_min, x_max, y_min, y_max.
    pub bound_sources: [BoundSource; 4],
}

impl<T: Scalar> RectPatch<T> {
    /// World-frame corners, counter-clockwise from (x_min, y_min).
    pub fn world_corners(&self) -> [Vec2<T>; 4] {
        [
            self.to_world.apply(Vec2::new(self.x_min, self.y_min)),
            self.to_world.apply(Vec2::new(self.x_max, self.y_min)),
            self.to_world.apply(Vec2::new(self.x_max, self.y_max)),
            self.to_world.apply(Vec2::new(self.x_min, self.y_max)),
        ]
    }

    /// Whether a world point lies in the patch grown by `pad`.
    pub fn contains_world(&self, p: Vec2<T>, pad: T) -> bool {
        let q = self.to_world.inverse().apply(p);
        q.x >= self.x_min - pad && q.x <= self.x_max + pad && q.y >= self.y_min - pad && q.y <= self.y_max + pad
    }

    pub fn bounds(&self) -> Bounds<T> {
        Bounds { x_min: self.x_min, x_max: self.x_max, y_min: self.y_min, y_max: self.y_max }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EnvelopeOptions<T> {
    /// Patch growth relative to the arc length.
    pub inflation: T,
    pub sweep: SweepOptions,
}

impl<T: Scalar> Default for EnvelopeOptions<T> {
    fn default() -> Self {
        Self { inflation: T::tol(1e-9), sweep: SweepOptions::default() }
    }
}

/// Bounds of one scenario in the canonical frame, before inflation.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioBounds<T> {
    pub bounds: Bounds<T>,
    pub sources: [BoundSource; 4],
    pub curves: usize,
}

/// Rigid motion taking the query into the canonical frame and the transformed query.
pub fn canonical_frame<T: Scalar>(query: &EnvelopeQuery<T>) -> Result<(RigidMotion<T>, EnvelopeQuery<T>), EnvelopeError> {
    let r = query.radius();
    let c1 = query.start.circle_center(Turn::Left, r);
    let c5 = query.end.circle_center(Turn::Left, r);
    let v = c5 - c1;
    if v.norm() <= T::tol(1e-12) * r {
        return Err(EnvelopeError::DegenerateFrame);
    }
    Ok(frame_along(query, c1, -v.angle()))
}

/// As `canonical_frame`, but with the start heading as x-axis when the frame degenerates.
pub fn canonical_frame_or_fallback<T: Scalar>(query: &EnvelopeQuery<T>) -> (RigidMotion<T>, EnvelopeQuery<T>) {
    canonical_frame(query).unwrap_or_else(|_| {
        let c1 = query.start.circle_center(Turn::Left, query.radius());
        frame_along(query, c1, -query.start.heading)
    })
}

fn frame_along<T: Scalar>(query: &EnvelopeQuery<T>, c1: Vec2<T>, rotation: T) -> (RigidMotion<T>, EnvelopeQuery<T>) {
    let rot = RigidMotion { rotation, translation: (T::zero(), T::zero()) };
    let rc = rot.apply(c1);
    let m = RigidMotion { rotation, translation: (-rc.x, query.radius() - rc.y) };
    (m, query.transformed(&m))
}

fn validate<T: Scalar>(query: &EnvelopeQuery<T>) -> Result<T, EnvelopeError> {
    let ok = |v: T| v.is_finite();
    if !(query.kappa_max > T::zero() && ok(query.kappa_max)) {
        return Err(EnvelopeError::Invalid("kappa_max must be positive and finite"));
    }
    if !(query.arc_length > T::zero() && ok(query.arc_length)) {
        return Err(EnvelopeError::Invalid("arc length must be positive and finite"));
    }
    if ![query.start.x, query.start.y, query.start.heading, query.end.x, query.end.y, query.end.heading].iter().all(|v| ok(*v)) {
        return Err(EnvelopeError::Invalid("poses must be finite"));
    }
    let dmin = query.dubins_min();
    let ell = query.arc_length;
    let f = |v: T| v.to_f64().unwrap();
    if ell < dmin - T::tol(1e-9) * ell {
        return Err(EnvelopeError::InfeasibleQuery { reason: InfeasibleReason::TooShort, length: f(ell), dubins_min: f(dmin) });
    }
    if ell >= dmin + T::two_pi() * query.radius() {
        return Err(EnvelopeError::InfeasibleQuery { reason: InfeasibleReason::TooLong, length: f(ell), dubins_min: f(dmin) });
    }
    Ok(dmin)
}

fn families_of(s: Scenario) -> Vec<Family> {
    let (d, a) = (s.departure, s.arrival);
    let mut v = vec![
        Family::Cscsc { d, m: Turn::Left, a },
        Family::Cscsc { d, m: Turn::Right, a },
        Family::Cccsc { d, a },
        Family::Csccc { d, a },
    ];
    if d == a {
        v.push(Family::Ccccc { d, branch: true });
        v.push(Family::Ccccc { d, branch: false });
    }
    v
}

/// Bounds of the curves of one scenario. The query must already be canonical.
pub fn scenario_bounds<T: Scalar>(query: &EnvelopeQuery<T>, scenario: Scenario, opts: &EnvelopeOptions<T>) -> Result<ScenarioBounds<T>, EnvelopeError> {
    validate(query)?;
    Ok(scenario_bounds_unchecked(query, scenario, opts))
}

fn scenario_bounds_unchecked<T: Scalar>(query: &EnvelopeQuery<T>, scenario: Scenario, opts: &EnvelopeOptions<T>) -> ScenarioBounds<T> {
    let ctx = Ctx::new(query.start, query.end, query.kappa_max, query.arc_length);
    let mut acc = Accumulator::new();
    acc.add(&Bounds::point(query.start.pos()), BoundSource::Endpoint);
    acc.add(&Bounds::point(query.end.pos()), BoundSource::Endpoint);
    // cheap exact candidates first so the sweeps can skip dominated peaks
    let (d, a) = (scenario.departure, scenario.arrival);
    for m in [Turn::Left, Turn::Right] {
        for dir in 0..4 {
            symmetric_candidates(&ctx, d, m, a, dir, &mut acc);
        }
    }
    if d == Turn::Left && a == Turn::Left {
        length_equation_candidates(query, &mut acc);
    }
    let traces: Vec<_> = families_of(scenario).into_iter().filter_map(|f| trace_family(f, &ctx, &opts.sweep, &mut acc)).collect();
    refine_traces(&traces, &opts.sweep, &mut acc);
    ScenarioBounds { bounds: acc.bounds, sources: acc.sources, curves: acc.curves }
}

/// Candidates from the closed-form length equations of the left-left scenario.
fn length_equation_candidates<T: Scalar>(query: &EnvelopeQuery<T>, acc: &mut Accumulator<T>) {
    let r = query.radius();
    let c1 = query.start.circle_center(Turn::Left, r);
    let c5 = query.end.circle_center(Turn::Left, r);
    let tol = T::residual_tol(1e-9) * r;
    // only meaningful when the query sits in the canonical frame
    if (c1.y - r).abs() > tol || (c5.y - r).abs() > tol || c1.x.abs() > tol {
        return;
    }
    for winding in [Winding::MiddleOpposite, Winding::AllSame] {
        let case = LengthEquationCase { x: c5.x, phi1: query.start.heading, phi2: query.end.heading, r, ell: query.arc_length, winding };
        let Ok(roots) = length_eq_roots(&case) else { continue };
        for h in roots {
            let Some(p) = length_eq::root_pieces(&case, h) else { continue };
            let word = crate::dubins::CurveWord::from_pieces(query.start, &p);
            let e = word.end();
            let gap = (e.x - query.end.x).abs().max((e.y - query.end.y).abs());
            if gap <= T::residual_tol(1e-8) * query.arc_length.max(r) {
                acc.add(&pieces_bounds(query.start, &p), BoundSource::LocalOptimum { class: CurveClass::Cscsc, winding: Some(winding) });
                acc.curves += 1;
            }
        }
    }
}

/// Largest canonical y over the curves of a scenario.
pub fn upmost_bound<T: Scalar>(query: &EnvelopeQuery<T>, scenario: Scenario) -> Result<T, EnvelopeError> {
    Ok(scenario_bounds(query, scenario, &EnvelopeOptions::default())?.bounds.y_max)
}

/// Smallest canonical y over the curves of a scenario.
pub fn bottommost_bound<T: Scalar>(query: &EnvelopeQuery<T>, scenario: Scenario) -> Result<T, EnvelopeError> {
    Ok(scenario_bounds(query, scenario, &EnvelopeOptions::default())?.bounds.y_min)
}

/// Canonical x range over the curves of a scenario.
pub fn horizontal_bounds<T: Scalar>(query: &EnvelopeQuery<T>, scenario: Scenario) -> Result<(T, T), EnvelopeError> {
    let b = scenario_bounds(query, scenario, &EnvelopeOptions::default())?.bounds;
    Ok((b.x_min, b.x_max))
}

/// Bounds of the five-arc curves of a same-turn scenario, `None` if there are none.
pub fn middle_circle_bounds_ccccc<T: Scalar>(query: &EnvelopeQuery<T>, scenario: Scenario) -> Result<Option<Bounds<T>>, EnvelopeError> {
    validate(query)?;
    if scenario.departure != scenario.arrival {
        return Ok(None);
    }
    let ctx = Ctx::new(query.start, query.end, query.kappa_max, query.arc_length);
    let mut acc = Accumulator::new();
    for branch in [true, false] {
        sweep_family(Family::Ccccc { d: scenario.departure, branch }, &ctx, &SweepOptions::default(), &mut acc);
    }
    Ok(if acc.curves > 0 { Some(acc.bounds) } else { None })
}

/// Patch cover of the swept region, one patch per scenario that has curves.
pub fn build_patches<T: Scalar>(query: &EnvelopeQuery<T>) -> Result<Vec<RectPatch<T>>, EnvelopeError> {
    build_patches_with(query, &EnvelopeOptions::default())
}

pub fn build_patches_with<T: Scalar>(query: &EnvelopeQuery<T>, opts: &EnvelopeOptions<T>) -> Result<Vec<RectPatch<T>>, EnvelopeError> {
    let dmin = validate(query)?;
    let (to_canon, cq) = canonical_frame_or_fallback(query);
    let to_world = to_canon.inverse();
    let ell = query.arc_length;
    let pad = opts.inflation * ell;
    let make = |b: Bounds<T>, scenario: Scenario, bound_sources: [BoundSource; 4]| RectPatch {
        x_min: b.x_min - pad,
        x_max: b.x_max + pad,
        y_min: b.y_min - pad,
        y_max: b.y_max + pad,
        to_world,
        scenario,
        bound_sources,
    };

    if ell <= dmin * (T::one() + T::tol(1e-13)) {
        let (w, word) = dubins_shortest_typed(&cq.start, &cq.end, cq.kappa_max);
        let mut b = word.bounds();
        b.include(cq.end.pos());
        let scenario = Scenario { departure: w.first(), arrival: w.last() };
        return Ok(vec![make(b, scenario, [BoundSource::DubinsMinimum; 4])]);
    }

    let mut out = Vec::new();
    for s in Scenario::ALL {
        let sb = scenario_bounds_unchecked(&cq, s, opts);
        if sb.curves > 0 {
            out.push(make(sb.bounds, s, sb.sources));
        }
    }
    if out.is_empty() {
        let f = |v: T| v.to_f64().unwrap();
        return Err(EnvelopeError::InfeasibleQuery { reason: InfeasibleReason::Unrealizable, length: f(ell), dubins_min: f(dmin) });
    }
    Ok(out)
}

/// Scenario of a Dubins word type.
pub fn scenario_of(w: WordType) -> Scenario {
    Scenario { departure: w.first(), arrival: w.last() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{sample_feasible_curves, SamplerOptions};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reference() -> EnvelopeQuery<f64> {
        EnvelopeQuery::new(OrientedPoint::new(0.0, 0.0, 0.0), OrientedPoint::new(2.0, 1.0, 1.2), 2.5, 1.0)
    }

    fn world_box(ps: &[RectPatch<f64>]) -> [f64; 4] {
        let mut b = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
        for p in ps {
            for c in p.world_corners() {
                b = [b[0].min(c.x), b[1].max(c.x), b[2].min(c.y), b[3].max(c.y)];
            }
        }
        b
    }

    #[test]
    fn reference_patches_match_frozen_extents() {
        let ps = build_patches(&reference()).unwrap();
        assert_eq!(ps.iter().map(|p| p.scenario.name()).collect::<Vec<_>>(), ["LL", "LR", "RL", "RR"]);
        // canonical extents; dense curve sampling reaches each within 3e-8
        let y_min = [-0.319810702837, -0.278459604657, -0.320318003724, -0.317305023952];
        for (p, y0) in ps.iter().zip(y_min) {
            assert!((p.x_min + 0.321307378656).abs() < 1e-10, "{p:?}");
            assert!((p.x_max - 1.893949917390).abs() < 1e-10, "{p:?}");
            assert!((p.y_max - 0.357385250187).abs() < 1e-10, "{p:?}");
            assert!((p.y_min - y0).abs() < 1e-10, "{p:?}");
            assert!((p.to_world.rotation - 0.3271097461).abs() < 1e-9);
        }
    }

    #[test]
    fn reference_patches_are_tight() {
        let q = reference();
        let ps = build_patches(&q).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let curves = sample_feasible_curves(&q, 300, (1e-9, 1e-9), &SamplerOptions::default(), &mut rng).unwrap();
        let inv = ps[0].to_world.inverse();
        let mut b = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
        for c in &curves {
            for w in c.points(q.start, 0.01) {
                let l = inv.apply(w);
                b = [b[0].min(l.x), b[1].max(l.x), b[2].min(l.y), b[3].max(l.y)];
            }
        }
        let hull = [
            ps.iter().map(|p| p.x_min).fold(f64::INFINITY, f64::min),
            ps.iter().map(|p| p.x_max).fold(f64::NEG_INFINITY, f64::max),
            ps.iter().map(|p| p.y_min).fold(f64::INFINITY, f64::min),
            ps.iter().map(|p| p.y_max).fold(f64::NEG_INFINITY, f64::max),
        ];
        for i in 0..4 {
            assert!((hull[i] - b[i]).abs() < 0.02, "{hull:?} {b:?}");
        }
    }

    #[test]
    fn single_precision_agrees() {
        let q = reference();
        let q32 = EnvelopeQuery::new(q.start.cast::<f32>(), q.end.cast::<f32>(), 2.5f32, 1.0f32);
        let a = build_patches(&q).unwrap();
        let b = build_patches(&q32).unwrap();
        assert_eq!(a.len(), b.len());
        for (p, r) in a.iter().zip(&b) {
            for (x, y) in [(p.x_min, r.x_min), (p.x_max, r.x_max), (p.y_min, r.y_min), (p.y_max, r.y_max)] {
                assert!((x - y as f64).abs() < 1e-3, "{x} {y}");
            }
        }
    }

    #[test]
    fn too_short_and_too_long() {
        let q = reference();
        let short = EnvelopeQuery { arc_length: 2.0, ..q };
        let long = EnvelopeQuery { arc_length: q.dubins_min() + 7.0, ..q };
        assert!(matches!(build_patches(&short), Err(EnvelopeError::InfeasibleQuery { reason: InfeasibleReason::TooShort, .. })));
        assert!(matches!(build_patches(&long), Err(EnvelopeError::InfeasibleQuery { reason: InfeasibleReason::TooLong, .. })));
    }

    fn arb_query() -> impl Strategy<Value = EnvelopeQuery<f64>> {
        (0.5..4.0f64, -3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64, 0.0..0.3f64).prop_filter_map("unrealizable", |(d, b, h0, h1, s)| {
            let st = OrientedPoint::new(0.0, 0.0, h0);
            let en = OrientedPoint::new(d * b.cos(), d * b.sin(), h1);
            let l = EnvelopeQuery::new(st, en, 1.0, 1.0).dubins_min();
            let q = EnvelopeQuery::new(st, en, l + s, 1.0);
            build_patches(&q).ok().map(|_| q)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn covers_scale_with_the_query(q in arb_query(), s in 0.01..500.0f64) {
            let scaled = EnvelopeQuery::new(
                OrientedPoint::new(q.start.x * s, q.start.y * s, q.start.heading),
                OrientedPoint::new(q.end.x * s, q.end.y * s, q.end.heading),
                q.arc_length * s,
                q.kappa_max / s,
            );
            let a = world_box(&build_patches(&q).unwrap());
            let b = world_box(&build_patches(&scaled).unwrap());
            for i in 0..4 {
                prop_assert!((a[i] * s - b[i]).abs() < 1e-6 * s, "{a:?} {b:?}");
            }
        }

        #[test]
        fn covers_move_with_the_query(q in arb_query(), rot in -3.0..3.0f64, tx in -50.0..50.0f64, ty in -50.0..50.0f64) {
            let m = RigidMotion { rotation: rot, translation: (tx, ty) };
            let a = build_patches(&q).unwrap();
            let b = build_patches(&q.transformed(&m)).unwrap();
            prop_assert_eq!(a.len(), b.len());
            for (p, r) in a.iter().zip(&b) {
                for (c, d) in p.world_corners().iter().zip(r.world_corners()) {
                    prop_assert!((m.apply(*c) - d).norm() < 1e-7);
                }
            }
        }
    }
}
