//! Planar curvature-bounded curve primitives and Dubins shortest paths.

use serde::{Deserialize, Serialize};

use crate::scalar::{sinc, wrap_2pi, wrap_pi, Scalar};

/// Position plus heading. The heading is kept in (-pi, pi].
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct OrientedPoint<T> {
    pub x: T,
    pub y: T,
    pub heading: T,
}

impl<T: Scalar> OrientedPoint<T> {
    pub fn new(x: T, y: T, heading: T) -> Self {
        Self { x, y, heading: wrap_pi(heading) }
    }

    pub fn pos(&self) -> Vec2<T> {
        Vec2::new(self.x, self.y)
    }

    /// Unit tangent.
    pub fn dir(&self) -> Vec2<T> {
        Vec2::unit(self.heading)
    }

    /// Center of the turning circle of radius `r` on the `turn` side.
    pub fn circle_center(&self, turn: Turn, r: T) -> Vec2<T> {
        self.pos() + Vec2::normal(self.heading) * (turn.sign::<T>() * r)
    }

    /// Same position, heading rotated by pi.
    pub fn reversed(&self) -> Self {
        Self::new(self.x, self.y, self.heading + T::PI())
    }

    pub fn cast<U: Scalar>(&self) -> OrientedPoint<U> {
        OrientedPoint {
            x: U::lit(self.x.to_f64().unwrap()),
            y: U::lit(self.y.to_f64().unwrap()),
            heading: U::lit(self.heading.to_f64().unwrap()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Vec2<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn unit(angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c, s)
    }

    /// Left normal of the unit vector at `angle`.
    pub fn normal(angle: T) -> Self {
        Self::new(-angle.sin(), angle.cos())
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Self) -> T {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> T {
        (self.x * self.x + self.y * self.y).sqrt()
    }

    /// Rotated counterclockwise by `angle`.
    pub fn rotate(self, angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn angle(self) -> T {
        self.y.atan2(self.x)
    }

    pub fn perp(self) -> Self {
        Self::new(-self.y, self.x)
    }
}

impl<T: Scalar> std::ops::Add for Vec2<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }
}

impl<T: Scalar> std::ops::Sub for Vec2<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }
}

impl<T: Scalar> std::ops::Mul<T> for Vec2<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s)
    }
}

impl<T: Scalar> std::ops::Neg for Vec2<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Turn {
    Left,
    Right,
}

impl Turn {
    pub fn sign<T: Scalar>(self) -> T {
        match self {
            Turn::Left => T::one(),
            Turn::Right => -T::one(),
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Turn::Left => Turn::Right,
            Turn::Right => Turn::Left,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Turn::Left => 'L',
            Turn::Right => 'R',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SegmentKind {
    Arc,
    Straight,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSegment<T> {
    pub kind: SegmentKind,
    pub signed_curvature: T,
    pub length: T,
    pub start: OrientedPoint<T>,
}

impl<T: Scalar> CurveSegment<T> {
    pub fn new(start: OrientedPoint<T>, signed_curvature: T, length: T) -> Self {
        let kind = if signed_curvature == T::zero() { SegmentKind::Straight } else { SegmentKind::Arc };
        Self { kind, signed_curvature, length, start }
    }

    pub fn end(&self) -> OrientedPoint<T> {
        propagate(self.start, self.signed_curvature, self.length)
    }

    pub fn point_at(&self, s: T) -> OrientedPoint<T> {
        propagate(self.start, self.signed_curvature, s)
    }

    /// Exact axis-aligned bounds of the segment.
    pub fn bounds(&self) -> Bounds<T> {
        let mut b = Bounds::point(self.start.pos());
        b.include(self.end().pos());
        if self.kind == SegmentKind::Arc && self.length > T::zero() {
            let k = self.signed_curvature;
            let sweep = k.abs() * self.length;
            let turn = if k > T::zero() { Turn::Left } else { Turn::Right };
            let c = self.start.circle_center(turn, T::one() / k.abs());
            let r = T::one() / k.abs();
            // headings at which the arc touches its circle's axis extremes
            let extremes = [
                (T::zero(), Vec2::new(T::zero(), -r)),
                (T::FRAC_PI_2(), Vec2::new(r, T::zero())),
                (T::PI(), Vec2::new(T::zero(), r)),
                (-T::FRAC_PI_2(), Vec2::new(-r, T::zero())),
            ];
            for (h, off) in extremes {
                // for a right turn the circle lies on the other side
                let off = if turn == Turn::Left { off } else { -off };
                let needed = wrap_2pi(turn.sign::<T>() * (h - self.start.heading));
                if needed <= sweep {
                    b.include(c + off);
                }
            }
        }
        b
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds<T> {
    pub x_min: T,
    pub x_max: T,
    pub y_min: T,
    pub y_max: T,
}

impl<T: Scalar> Bounds<T> {
    pub fn point(p: Vec2<T>) -> Self {
        Self { x_min: p.x, x_max: p.x, y_min: p.y, y_max: p.y }
    }

    pub fn empty() -> Self {
        Self {
            x_min: T::infinity(),
            x_max: T::neg_infinity(),
            y_min: T::infinity(),
            y_max: T::neg_infinity(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.x_min > self.x_max
    }

    pub fn include(&mut self, p: Vec2<T>) {
        self.x_min = self.x_min.min(p.x);
        self.x_max = self.x_max.max(p.x);
        self.y_min = self.y_min.min(p.y);
        self.y_max = self.y_max.max(p.y);
    }

    pub fn merge(&mut self, o: &Self) {
        self.x_min = self.x_min.min(o.x_min);
        self.x_max = self.x_max.max(o.x_max);
        self.y_min = self.y_min.min(o.y_min);
        self.y_max = self.y_max.max(o.y_max);
    }

    pub fn contains(&self, p: Vec2<T>, pad: T) -> bool {
        p.x >= self.x_min - pad && p.x <= self.x_max + pad && p.y >= self.y_min - pad && p.y <= self.y_max + pad
    }
}

/// Ordered concatenation of segments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveWord<T> {
    pub segments: Vec<CurveSegment<T>>,
}

impl<T: Scalar> CurveWord<T> {
    /// Builds a word from (signed curvature, length) pieces starting at `start`.
    pub fn from_pieces(start: OrientedPoint<T>, pieces: &[(T, T)]) -> Self {
        let mut segments = Vec::with_capacity(pieces.len());
        let mut p = start;
        for &(k, len) in pieces {
            let seg = CurveSegment::new(p, k, len);
            p = seg.end();
            segments.push(seg);
        }
        Self { segments }
    }

    pub fn length(&self) -> T {
        self.segments.iter().fold(T::zero(), |acc, s| acc + s.length)
    }

    pub fn start(&self) -> OrientedPoint<T> {
        self.segments[0].start
    }

    pub fn end(&self) -> OrientedPoint<T> {
        word_endpoint(self)
    }

    pub fn bounds(&self) -> Bounds<T> {
        let mut b = Bounds::empty();
        for s in &self.segments {
            b.merge(&s.bounds());
        }
        b
    }

    /// Point at arc length `s` from the start (clamped to the word).
    pub fn point_at(&self, s: T) -> OrientedPoint<T> {
        let mut rem = s.max(T::zero());
        for seg in &self.segments {
            if rem <= seg.length {
                return seg.point_at(rem);
            }
            rem = rem - seg.length;
        }
        self.end()
    }

    /// Letters of the word, e.g. "LSR".
    pub fn letters(&self) -> String {
        self.segments
            .iter()
            .map(|s| match s.kind {
                SegmentKind::Straight => 'S',
                SegmentKind::Arc if s.signed_curvature > T::zero() => 'L',
                SegmentKind::Arc => 'R',
            })
            .collect()
    }
}

/// Closed-form integration of the unit-speed Dubins car.
pub fn propagate<T: Scalar>(start: OrientedPoint<T>, signed_curvature: T, arc_length: T) -> OrientedPoint<T> {
    let half = signed_curvature * arc_length / T::lit(2.0);
    let chord = arc_length * sinc(half);
    let dir = start.heading + half;
    OrientedPoint::new(
        start.x + chord * dir.cos(),
        start.y + chord * dir.sin(),
        start.heading + signed_curvature * arc_length,
    )
}

/// Folds `propagate` over the segments, ignoring each segment's stored start.
pub fn word_endpoint<T: Scalar>(word: &CurveWord<T>) -> OrientedPoint<T> {
    let mut p = word.segments[0].start;
    for s in &word.segments {
        p = propagate(p, s.signed_curvature, s.length);
    }
    p
}

/// Rotation about the origin followed by a translation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidMotion<T> {
    pub rotation: T,
    pub translation: (T, T),
}

impl<T: Scalar> RigidMotion<T> {
    pub fn identity() -> Self {
        Self { rotation: T::zero(), translation: (T::zero(), T::zero()) }
    }

    pub fn apply(&self, p: Vec2<T>) -> Vec2<T> {
        let (s, c) = self.rotation.sin_cos();
        Vec2::new(c * p.x - s * p.y + self.translation.0, s * p.x + c * p.y + self.translation.1)
    }

    pub fn apply_pose(&self, p: &OrientedPoint<T>) -> OrientedPoint<T> {
        let q = self.apply(p.pos());
        OrientedPoint::new(q.x, q.y, p.heading + self.rotation)
    }

    pub fn inverse(&self) -> Self {
        let (s, c) = self.rotation.sin_cos();
        let (tx, ty) = self.translation;
        Self { rotation: -self.rotation, translation: (-(c * tx + s * ty), s * tx - c * ty) }
    }

    /// `self` after `first`.
    pub fn compose(&self, first: &Self) -> Self {
        let t = self.apply(Vec2::new(first.translation.0, first.translation.1));
        Self { rotation: self.rotation + first.rotation, translation: (t.x, t.y) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WordType {
    Lsl,
    Rsr,
    Lsr,
    Rsl,
    Lrl,
    Rlr,
}

impl WordType {
    /// Enumeration order, also the tie-break order.
    pub const ALL: [WordType; 6] = [WordType::Lsl, WordType::Rsr, WordType::Lsr, WordType::Rsl, WordType::Lrl, WordType::Rlr];

    pub fn first(self) -> Turn {
        match self {
            WordType::Lsl | WordType::Lsr | WordType::Lrl => Turn::Left,
            _ => Turn::Right,
        }
    }

    pub fn last(self) -> Turn {
        match self {
            WordType::Lsl | WordType::Rsl | WordType::Lrl => Turn::Left,
            _ => Turn::Right,
        }
    }

    pub fn is_csc(self) -> bool {
        !matches!(self, WordType::Lrl | WordType::Rlr)
    }
}

/// Signed curvatures and lengths of one Dubins word, if the word exists.
pub fn dubins_word_pieces<T: Scalar>(
    start: &OrientedPoint<T>,
    end: &OrientedPoint<T>,
    kappa: T,
    word: WordType,
) -> Option<[(T, T); 3]> {
    let r = T::one() / kappa;
    let (d, a) = (word.first(), word.last());
    let ds = d.sign::<T>();
    let as_ = a.sign::<T>();
    let c0 = start.circle_center(d, r);
    let c1 = end.circle_center(a, r);
    let v = c1 - c0;
    let dist = v.norm();
    if word.is_csc() {
        let k = (as_ - ds) * r;
        if dist < k.abs() {
            return None;
        }
        let psi = if dist == T::zero() { start.heading } else { v.angle() - (k / dist).max(-T::one()).min(T::one()).asin() };
        let s = (dist * dist - k * k).max(T::zero()).sqrt();
        let a1 = wrap_2pi(ds * (psi - start.heading));
        let a2 = wrap_2pi(as_ * (end.heading - psi));
        Some([(ds * kappa, a1 * r), (T::zero(), s), (as_ * kappa, a2 * r)])
    } else {
        let four_r = T::lit(4.0) * r;
        if dist > four_r {
            return None;
        }
        let mid = (c0 + c1) * T::lit(0.5);
        let e = if dist > T::zero() { v * (T::one() / dist) } else { start.dir() };
        let h = (T::lit(4.0) * r * r - dist * dist / T::lit(4.0)).max(T::zero()).sqrt();
        let mut best: Option<[(T, T); 3]> = None;
        for side in [T::one(), -T::one()] {
            let cm = mid + e.perp() * (side * h);
            let t1 = (c0 + cm) * T::lit(0.5);
            let t2 = (cm + c1) * T::lit(0.5);
            // heading at a point on a circle traversed in direction `turn`
            let heading_at = |c: Vec2<T>, p: Vec2<T>, sgn: T| {
                let w = (c - p) * (sgn / r);
                (-w.x).atan2(w.y)
            };
            let h1 = heading_at(c0, t1, ds);
            let h2 = heading_at(c1, t2, as_);
            let a1 = wrap_2pi(ds * (h1 - start.heading));
            let a2 = wrap_2pi(-ds * (h2 - h1));
            let a3 = wrap_2pi(as_ * (end.heading - h2));
            let cand = [(ds * kappa, a1 * r), (-ds * kappa, a2 * r), (as_ * kappa, a3 * r)];
            let len = cand[0].1 + cand[1].1 + cand[2].1;
            if best.map_or(true, |b| len < b[0].1 + b[1].1 + b[2].1) {
                best = Some(cand);
            }
        }
        best
    }
}

/// Length of one Dubins word, if it exists.
pub fn dubins_word_length<T: Scalar>(start: &OrientedPoint<T>, end: &OrientedPoint<T>, kappa: T, word: WordType) -> Option<T> {
    dubins_word_pieces(start, end, kappa, word).map(|p| p[0].1 + p[1].1 + p[2].1)
}

/// Shortest word and its type.
pub fn dubins_shortest_typed<T: Scalar>(start: &OrientedPoint<T>, end: &OrientedPoint<T>, kappa: T) -> (WordType, CurveWord<T>) {
    let mut best: Option<(WordType, [(T, T); 3], T)> = None;
    for w in WordType::ALL {
        if let Some(p) = dubins_word_pieces(start, end, kappa, w) {
            let len = p[0].1 + p[1].1 + p[2].1;
            if best.as_ref().map_or(true, |b| len < b.2) {
                best = Some((w, p, len));
            }
        }
    }
    // some CSC word always exists
    let (w, p, _) = best.expect("at least one Dubins word exists");
    (w, CurveWord::from_pieces(*start, &p))
}

/// Shortest curvature-bounded path between two poses.
pub fn dubins_shortest<T: Scalar>(start: &OrientedPoint<T>, end: &OrientedPoint<T>, kappa: T) -> CurveWord<T> {
    dubins_shortest_typed(start, end, kappa).1
}

/// Length of the shortest path.
pub fn dubins_distance<T: Scalar>(start: &OrientedPoint<T>, end: &OrientedPoint<T>, kappa: T) -> T {
    WordType::ALL
        .iter()
        .filter_map(|&w| dubins_word_length(start, end, kappa, w))
        .fold(T::infinity(), |a, b| a.min(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn pose(x: f64, y: f64, h: f64) -> OrientedPoint<f64> {
        OrientedPoint::new(x, y, h)
    }

    fn close(a: &OrientedPoint<f64>, b: &OrientedPoint<f64>, tol: f64) -> bool {
        (a.x - b.x).abs() < tol && (a.y - b.y).abs() < tol && wrap_pi(a.heading - b.heading).abs() < tol
    }

    #[test]
    fn propagate_examples() {
        assert!(close(&propagate(pose(0., 0., 0.), 0.0, 5.0), &pose(5., 0., 0.), 1e-15));
        assert!(close(&propagate(pose(0., 0., 0.), 1.0, PI / 2.0), &pose(1., 1., PI / 2.0), 1e-15));
        assert!(close(&propagate(pose(0., 0., 0.), 1.0, 2.0 * PI), &pose(0., 0., 0.), 1e-15));
    }

    #[test]
    fn propagate_right_turn() {
        let p = propagate(pose(0., 0., 0.), -0.5, PI);
        assert!(close(&p, &pose(2., -2., -PI / 2.0), 1e-14));
    }

    #[test]
    fn word_endpoint_examples() {
        let w = CurveWord::from_pieces(pose(0., 0., 0.), &[(0.0, 1.0)]);
        assert!(close(&w.end(), &pose(1., 0., 0.), 1e-15));
        let w = CurveWord::from_pieces(pose(2., -1., 0.4), &[(1.0, 0.0), (-1.0, 0.0), (1.0, 0.0)]);
        assert!(close(&w.end(), &pose(2., -1., 0.4), 1e-15));
    }

    #[test]
    fn rigid_motion_inverse_roundtrip() {
        let m = RigidMotion::<f64> { rotation: 0.7, translation: (3.0, -2.0) };
        let id = m.inverse().compose(&m);
        let p = id.apply(Vec2::new(1.0, 0.0));
        assert!((p.x - 1.0).abs() < 1e-12 && p.y.abs() < 1e-12);
        assert!(id.rotation.abs() < 1e-12);
    }

    #[test]
    fn dubins_straight() {
        let w = dubins_shortest(&pose(0., 0., 0.), &pose(10., 0., 0.), 1.0);
        assert!((w.length() - 10.0).abs() < 1e-12);
        assert_eq!(w.letters(), "LSL");
    }

    #[test]
    fn segment_bounds_quarter_turns() {
        let s = CurveSegment::new(pose(0., 0., 0.), 1.0, PI);
        let b = s.bounds();
        assert!((b.x_max - 1.0).abs() < 1e-12);
        assert!((b.y_max - 2.0).abs() < 1e-12);
        assert!(b.x_min.abs() < 1e-12 && b.y_min.abs() < 1e-12);
        let s = CurveSegment::new(pose(0., 0., 0.), -1.0, PI);
        let b = s.bounds();
        assert!((b.y_min + 2.0).abs() < 1e-12 && (b.x_max - 1.0).abs() < 1e-12);
    }

    #[test]
    fn segment_bounds_f32() {
        let s = CurveSegment::new(OrientedPoint::new(0.0_f32, 0.0, 0.0), 1.0, 3.0 * std::f32::consts::PI / 2.0);
        let b = s.bounds();
        assert!((b.x_min + 1.0).abs() < 1e-5 && (b.y_max - 2.0).abs() < 1e-5);
    }
}
