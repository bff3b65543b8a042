//! Tracing of the length-constrained fundamental curve families.
//!
//! Every curve produced here is a genuine curve of the prescribed length that
//! joins the two query poses, so adding its exact bounds to a patch can never
//! make the patch unsound. Extremes are located by sweeping the first-arc angle,
//! solving for the remaining free parameter, and refining local maxima.

use serde::{Deserialize, Serialize};

use crate::dubins::{dubins_distance, propagate, Bounds, OrientedPoint, Turn, Vec2};
use crate::roots::{bisect_predicate, brent_max, illinois, newton_bisect};
use crate::scalar::{wrap_2pi, Scalar};

use super::length_eq::Winding;

pub type Pieces<T> = [(T, T); 5];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CurveClass {
    Cscsc,
    Cccsc,
    Csccc,
    Ccccc,
}

/// What produced one extent of a patch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum BoundSource {
    /// An endpoint position.
    Endpoint,
    /// The unique curve at the minimum length.
    DubinsMinimum,
    /// Interior extremum along a family.
    LocalOptimum { class: CurveClass, winding: Option<Winding> },
    /// Extremum at the end of a family's parameter range.
    BoundaryCase { class: CurveClass, winding: Option<Winding> },
}

/// Running bounds with the source of each extent, ordered x_min, x_max, y_min, y_max.
#[derive(Clone, Debug)]
pub struct Accumulator<T> {
    pub bounds: Bounds<T>,
    pub sources: [BoundSource; 4],
    pub curves: usize,
}

impl<T: Scalar> Accumulator<T> {
    pub fn new() -> Self {
        Self { bounds: Bounds::empty(), sources: [BoundSource::Endpoint; 4], curves: 0 }
    }

    pub fn add(&mut self, b: &Bounds<T>, src: BoundSource) {
        if b.x_min < self.bounds.x_min {
            self.bounds.x_min = b.x_min;
            self.sources[0] = src;
        }
        if b.x_max > self.bounds.x_max {
            self.bounds.x_max = b.x_max;
            self.sources[1] = src;
        }
        if b.y_min < self.bounds.y_min {
            self.bounds.y_min = b.y_min;
            self.sources[2] = src;
        }
        if b.y_max > self.bounds.y_max {
            self.bounds.y_max = b.y_max;
            self.sources[3] = src;
        }
    }
}

impl<T: Scalar> Default for Accumulator<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Extent of `b` along axis direction `dir`: +x, -x, +y, -y.
pub fn extent<T: Scalar>(b: &Bounds<T>, dir: usize) -> T {
    match dir {
        0 => b.x_max,
        1 => -b.x_min,
        2 => b.y_max,
        _ => -b.y_min,
    }
}

/// Exact bounds of a piecewise curve.
pub fn pieces_bounds<T: Scalar>(start: OrientedPoint<T>, pieces: &[(T, T)]) -> Bounds<T> {
    let mut b = Bounds::point(start.pos());
    let mut p = start;
    for &(k, len) in pieces {
        let seg = crate::dubins::CurveSegment::new(p, k, len);
        if len > T::zero() {
            b.merge(&seg.bounds());
        }
        p = seg.end();
    }
    b
}

/// Query data shared by the family constructions.
#[derive(Clone, Copy, Debug)]
pub struct Ctx<T> {
    pub p0: OrientedPoint<T>,
    pub p1: OrientedPoint<T>,
    pub r: T,
    pub kappa: T,
    pub ell: T,
}

impl<T: Scalar> Ctx<T> {
    pub fn new(p0: OrientedPoint<T>, p1: OrientedPoint<T>, kappa: T, ell: T) -> Self {
        Self { p0, p1, r: T::one() / kappa, kappa, ell }
    }

    /// The same curves traversed backwards.
    pub fn reversed(&self) -> Self {
        Self { p0: self.p1.reversed(), p1: self.p0.reversed(), ..*self }
    }

    fn ftol(&self) -> T {
        T::residual_tol(1e-11) * self.ell.max(self.r)
    }

    /// Largest first-arc angle on `turn` compatible with the length budget.
    /// `r a + D(after arc -> end)` is nondecreasing in `a`, so bisection applies.
    pub fn first_arc_max(&self, turn: Turn) -> Option<T> {
        self.arc_max_from(self.p0, T::zero(), turn)
    }

    /// Looser and cheaper than `arc_max_from`: the Dubins distance is replaced
    /// by the straight-line distance, which keeps the predicate monotone.
    fn arc_max_euclid(&self, pose: OrientedPoint<T>, used: T, turn: Turn) -> Option<T> {
        let budget = self.ell * (T::one() + T::tol(1e-9));
        let k = turn.sign::<T>() * self.kappa;
        let target = self.p1.pos();
        let ok = |a: T| used + self.r * a + (propagate(pose, k, self.r * a).pos() - target).norm() <= budget;
        if !ok(T::zero()) {
            return None;
        }
        let (mut lo, mut hi) = (T::zero(), T::two_pi());
        if ok(hi) {
            return Some(hi);
        }
        // only an upper bound is needed, so stop early and keep the failing end
        for _ in 0..16 {
            let m = (lo + hi) * T::lit(0.5);
            if ok(m) {
                lo = m;
            } else {
                hi = m;
            }
        }
        Some(hi)
    }

    fn arc_max_from(&self, pose: OrientedPoint<T>, used: T, turn: Turn) -> Option<T> {
        let budget = self.ell * (T::one() + T::tol(1e-9));
        let k = turn.sign::<T>() * self.kappa;
        let ok = |a: T| used + self.r * a + dubins_distance(&propagate(pose, k, self.r * a), &self.p1, self.kappa) <= budget;
        if !ok(T::zero()) {
            return None;
        }
        let hi = T::two_pi();
        if ok(hi) {
            return Some(hi);
        }
        Some(bisect_predicate(ok, T::zero(), hi, 30))
    }
}

/// Heading of the tangent at `p` on the circle centered `c` traversed in `sign` direction.
fn tangent_heading<T: Scalar>(c: Vec2<T>, p: Vec2<T>, sign: T, r: T) -> T {
    let w = (c - p) * (sign / r);
    (-w.x).atan2(w.y)
}

/// Tangent from the circle centered `ca` (direction `sa`) to the circle centered `cb` (direction `sb`).
/// Returns heading and straight length.
fn tangent<T: Scalar>(ca: Vec2<T>, sa: T, cb: Vec2<T>, sb: T, r: T) -> Option<(T, T)> {
    let v = cb - ca;
    let d = v.norm();
    let k = (sb - sa) * r;
    if d < k.abs() || d == T::zero() {
        return None;
    }
    let psi = v.angle() - (k / d).max(-T::one()).min(T::one()).asin();
    Some((psi, (d * d - k * k).max(T::zero()).sqrt()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Cscsc { d: Turn, m: Turn, a: Turn },
    Cccsc { d: Turn, a: Turn },
    /// Stored as the reversed `Cccsc`; `d`, `a` are the original letters.
    Csccc { d: Turn, a: Turn },
    Ccccc { d: Turn, branch: bool },
}

impl Family {
    pub fn class(&self) -> CurveClass {
        match self {
            Family::Cscsc { .. } => CurveClass::Cscsc,
            Family::Cccsc { .. } => CurveClass::Cccsc,
            Family::Csccc { .. } => CurveClass::Csccc,
            Family::Ccccc { .. } => CurveClass::Ccccc,
        }
    }

    pub fn winding(&self) -> Option<Winding> {
        match *self {
            Family::Cscsc { d, m, a } if d == m && m == a => Some(Winding::AllSame),
            Family::Cscsc { d, m, a } if d != m && m != a => Some(Winding::MiddleOpposite),
            _ => None,
        }
    }

    pub fn scenario(&self) -> (Turn, Turn) {
        match *self {
            Family::Cscsc { d, a, .. } | Family::Cccsc { d, a } | Family::Csccc { d, a } => (d, a),
            Family::Ccccc { d, .. } => (d, d),
        }
    }

    /// Query context the family is traced in.
    pub fn ctx<T: Scalar>(&self, ctx: &Ctx<T>) -> Ctx<T> {
        match self {
            Family::Csccc { .. } => ctx.reversed(),
            _ => *ctx,
        }
    }

    /// All family members at outer parameter `t` (first-arc angle in the traced context).
    pub fn curves_at<T: Scalar>(&self, c: &Ctx<T>, t: T, out: &mut Vec<Pieces<T>>) {
        match *self {
            Family::Cscsc { d, m, a } => cscsc_at(c, d, m, a, t, out),
            Family::Cccsc { d, a } => cccsc_at(c, d, a, t, out),
            Family::Csccc { d, a } => cccsc_at(c, a.flip(), d.flip(), t, out),
            Family::Ccccc { d, branch } => ccccc_at(c, d, branch, t, out),
        }
    }

    pub fn first_turn(&self) -> Turn {
        match *self {
            Family::Csccc { a, .. } => a.flip(),
            Family::Cscsc { d, .. } | Family::Cccsc { d, .. } | Family::Ccccc { d, .. } => d,
        }
    }
}

fn cscsc_at<T: Scalar>(c: &Ctx<T>, d: Turn, m: Turn, a: Turn, alpha: T, out: &mut Vec<Pieces<T>>) {
    let r = c.r;
    let (ds, ms, as_) = (d.sign::<T>(), m.sign::<T>(), a.sign::<T>());
    let s_hi = c.ell - r * alpha;
    if s_hi < T::zero() {
        return;
    }
    let c1 = c.p0.circle_center(d, r);
    let c5 = c.p1.circle_center(a, r);
    let psi = c.p0.heading + ds * alpha;
    let u = Vec2::unit(psi);
    let base = c1 - Vec2::normal(psi) * (ds * r) + Vec2::normal(psi) * (ms * r);
    let phi2 = c.p1.heading;
    let eval = |s: T| -> Option<(T, T, Pieces<T>)> {
        let c3 = base + u * s;
        let (psi2, s2) = tangent(c3, ms, c5, as_, r)?;
        let a3 = wrap_2pi(ms * (psi2 - psi));
        let a5 = wrap_2pi(as_ * (phi2 - psi2));
        let len = r * (alpha + a3 + a5) + s + s2;
        let pieces = [(ds * c.kappa, r * alpha), (T::zero(), s), (ms * c.kappa, r * a3), (T::zero(), s2), (as_ * c.kappa, r * a5)];
        Some((len - c.ell, T::one() - (psi2 - psi).cos(), pieces))
    };

    let mut brk: [T; 6] = [T::zero(); 6];
    let mut nb = 0;
    let mut push = |v: T| {
        if v > T::zero() && v < s_hi && v.is_finite() {
            brk[nb] = v;
            nb += 1;
        }
    };
    // last arc vanishes where the second straight ends on the end pose
    let n2 = Vec2::normal(phi2);
    let den = n2.dot(u);
    if den != T::zero() {
        push((n2.dot(c5 - base) - (as_ - ms) * r) / den);
    }
    // inner tangent ceases to exist where the circles overlap
    if m != a {
        let w = base - c5;
        let bq = u.dot(w);
        let cq = w.dot(w) - T::lit(4.0) * r * r;
        let disc = bq * bq - cq;
        if disc >= T::zero() {
            let sq = disc.sqrt();
            push(-bq - sq);
            push(-bq + sq);
        }
    }
    let mut pts: Vec<T> = Vec::with_capacity(nb + 2);
    pts.push(T::zero());
    pts.extend_from_slice(&brk[..nb]);
    pts.push(s_hi);
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let ftol = c.ftol();
    for w in pts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi <= lo {
            continue;
        }
        // a few ulps at least, or the breakpoint itself is evaluated
        let eta = ((hi - lo) * T::lit(1e-10)).max((lo.abs() + hi.abs()) * T::epsilon() * T::lit(8.0));
        if hi - lo <= T::lit(2.0) * eta {
            continue;
        }
        let (a0, b0) = if lo == T::zero() { (lo, hi - eta) } else { (lo + eta, hi - eta) };
        let (Some(fa), Some(fb)) = (eval(a0), eval(b0)) else { continue };
        if fa.0.abs() <= ftol {
            out.push(fa.2);
            continue;
        }
        if fa.0.signum() == fb.0.signum() {
            if fb.0.abs() <= ftol {
                out.push(fb.2);
            }
            continue;
        }
        let root = newton_bisect(
            |s| eval(s).map_or((T::nan(), T::nan()), |e| (e.0, e.1)),
            a0,
            b0,
            (a0 + b0) / T::lit(2.0),
            ftol * T::lit(0.1),
            100,
        );
        if let Ok(s) = root {
            if let Some(e) = eval(s) {
                if e.0.abs() <= ftol {
                    out.push(e.2);
                }
            }
        }
    }
}

/// One evaluation of a generically traced inner parameter.
struct InnerEval<T> {
    resid: T,
    arcs: [T; 3],
    pieces: Pieces<T>,
}

/// Roots of `eval` on `[0, hi]`, separating wrap jumps and validity edges.
fn inner_roots<T: Scalar, F>(eval: F, hi: T, n: usize, ftol: T, out: &mut Vec<Pieces<T>>)
where
    F: Fn(T) -> Option<InnerEval<T>>,
{
    if hi <= T::zero() {
        if let Some(e) = eval(T::zero()) {
            if e.resid.abs() <= ftol {
                out.push(e.pieces);
            }
        }
        return;
    }
    let same_piece = |x: &InnerEval<T>, y: &InnerEval<T>| x.arcs.iter().zip(y.arcs.iter()).all(|(p, q)| (*p - *q).abs() < T::PI());
    let solve = |a: T, b: T, out: &mut Vec<Pieces<T>>| {
        if let Ok(t) = illinois(|t| eval(t).map_or(T::nan(), |e| e.resid), a, b, ftol * T::lit(0.1), 100) {
            if let Some(e) = eval(t) {
                if e.resid.abs() <= ftol {
                    out.push(e.pieces);
                }
            }
        }
    };
    let mut prev: Option<(T, InnerEval<T>)> = None;
    for i in 0..n {
        let t = hi * T::from_usize(i).unwrap() / T::from_usize(n - 1).unwrap();
        let cur = eval(t);
        match (&prev, &cur) {
            (Some((pt, pe)), Some(ce)) => {
                if same_piece(pe, ce) {
                    if pe.resid.signum() != ce.resid.signum() {
                        solve(*pt, t, out);
                    }
                } else {
                    // locate the jump and treat both sides separately
                    let jt = bisect_predicate(|x| eval(x).map_or(false, |e| same_piece(pe, &e)), *pt, t, JUMP_ITERS);
                    if let Some(je) = eval(jt) {
                        if pe.resid.signum() != je.resid.signum() {
                            solve(*pt, jt, out);
                        } else if je.resid.abs() <= ftol {
                            out.push(je.pieces);
                        }
                    }
                    let kt = bisect_predicate(|x| eval(x).map_or(false, |e| same_piece(ce, &e)), t, *pt, JUMP_ITERS);
                    if let Some(ke) = eval(kt) {
                        if ke.resid.signum() != ce.resid.signum() {
                            solve(kt, t, out);
                        } else if ke.resid.abs() <= ftol {
                            out.push(ke.pieces);
                        }
                    }
                }
            }
            (Some((pt, pe)), None) => {
                let et = bisect_predicate(|x| eval(x).map_or(false, |e| same_piece(pe, &e)), *pt, t, JUMP_ITERS);
                if let Some(ee) = eval(et) {
                    if ee.resid.signum() != pe.resid.signum() {
                        solve(*pt, et, out);
                    } else if ee.resid.abs() <= ftol {
                        out.push(ee.pieces);
                    }
                }
            }
            (None, Some(ce)) if i > 0 => {
                let pt = hi * T::from_usize(i - 1).unwrap() / T::from_usize(n - 1).unwrap();
                let et = bisect_predicate(|x| eval(x).map_or(false, |e| same_piece(ce, &e)), t, pt, JUMP_ITERS);
                if let Some(ee) = eval(et) {
                    if ee.resid.signum() != ce.resid.signum() {
                        solve(et, t, out);
                    } else if ee.resid.abs() <= ftol {
                        out.push(ee.pieces);
                    }
                }
            }
            _ => {}
        }
        if let Some(ce) = &cur {
            if ce.resid.abs() <= ftol {
                out.push(ce.pieces);
            }
        }
        prev = cur.map(|e| (t, e));
    }
}

const INNER_SAMPLES: usize = 17;
/// Bisection steps locating an arc wrap or a validity edge.
const JUMP_ITERS: usize = 20;

fn cccsc_at<T: Scalar>(c: &Ctx<T>, d: Turn, a: Turn, th1: T, out: &mut Vec<Pieces<T>>) {
    let r = c.r;
    let (ds, as_) = (d.sign::<T>(), a.sign::<T>());
    let t1 = propagate(c.p0, ds * c.kappa, r * th1);
    let Some(th2_hi) = c.arc_max_euclid(t1, r * th1, d.flip()) else { return };
    let c5 = c.p1.circle_center(a, r);
    let phi2 = c.p1.heading;
    let c1 = c.p0.circle_center(d, r);
    let c2 = t1.circle_center(d.flip(), r);
    let eval = |th2: T| -> Option<InnerEval<T>> {
        // the third circle rolls around the second
        let c3 = c2 + (c1 - c2).rotate(-ds * th2);
        let h2 = t1.heading - ds * th2;
        let (psi3, s) = tangent(c3, ds, c5, as_, r)?;
        let a3 = wrap_2pi(ds * (psi3 - h2));
        let a5 = wrap_2pi(as_ * (phi2 - psi3));
        let len = r * (th1 + th2 + a3 + a5) + s;
        Some(InnerEval {
            resid: len - c.ell,
            arcs: [a3, a5, T::zero()],
            pieces: [(ds * c.kappa, r * th1), (-ds * c.kappa, r * th2), (ds * c.kappa, r * a3), (T::zero(), s), (as_ * c.kappa, r * a5)],
        })
    };
    inner_roots(eval, th2_hi, INNER_SAMPLES, c.ftol(), out);
}

fn ccccc_at<T: Scalar>(c: &Ctx<T>, d: Turn, branch: bool, th1: T, out: &mut Vec<Pieces<T>>) {
    let r = c.r;
    let ds = d.sign::<T>();
    let t1 = propagate(c.p0, ds * c.kappa, r * th1);
    let c2 = t1.circle_center(d.flip(), r);
    let rev = c.reversed();
    // last-arc budget: a reversed first arc turning the opposite way
    let Some(th5_hi) = rev.arc_max_euclid(rev.p0, T::zero(), d.flip()) else { return };
    let side = if branch { T::one() } else { -T::one() };
    let c5 = c.p1.circle_center(d, r);
    let c4_end = c.p1.circle_center(d.flip(), r);
    let eval = |th5: T| -> Option<InnerEval<T>> {
        let c4 = c5 + (c4_end - c5).rotate(-ds * th5);
        let h4 = c.p1.heading - ds * th5;
        let w = c4 - c2;
        let dist = w.norm();
        let four_r = T::lit(4.0) * r;
        if dist > four_r || dist == T::zero() {
            return None;
        }
        let mid = (c2 + c4) * T::lit(0.5);
        let hh = (T::lit(4.0) * r * r - dist * dist / T::lit(4.0)).max(T::zero()).sqrt();
        let c3 = mid + (w * (T::one() / dist)).perp() * (side * hh);
        let p23 = (c2 + c3) * T::lit(0.5);
        let p34 = (c3 + c4) * T::lit(0.5);
        let h23 = tangent_heading(c2, p23, -ds, r);
        let h34 = tangent_heading(c3, p34, ds, r);
        let a2 = wrap_2pi(-ds * (h23 - t1.heading));
        let a3 = wrap_2pi(ds * (h34 - h23));
        let a4 = wrap_2pi(-ds * (h4 - h34));
        let len = r * (th1 + a2 + a3 + a4 + th5);
        Some(InnerEval {
            resid: len - c.ell,
            arcs: [a2, a3, a4],
            pieces: [(ds * c.kappa, r * th1), (-ds * c.kappa, r * a2), (ds * c.kappa, r * a3), (-ds * c.kappa, r * a4), (ds * c.kappa, r * th5)],
        })
    };
    inner_roots(eval, th5_hi, INNER_SAMPLES + 8, c.ftol(), out);
}

/// Sweep settings.
#[derive(Clone, Copy, Debug)]
pub struct SweepOptions {
    pub outer_samples: usize,
    pub gap_bisections: usize,
    pub refine_iters: usize,
    pub refine_peaks: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { outer_samples: 25, gap_bisections: 10, refine_iters: 60, refine_peaks: 2 }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Sample<T> {
    pub t: T,
    pub count: usize,
    pub ext: [T; 4],
}

/// Outer samples of one family, ready for peak refinement.
#[derive(Clone, Debug)]
pub struct Trace<T> {
    pub family: Family,
    pub ctx: Ctx<T>,
    pub hi: T,
    pub samples: Vec<Sample<T>>,
}

fn eval_family<T: Scalar>(family: Family, c: &Ctx<T>, hi: T, t: T, buf: &mut Vec<Pieces<T>>, acc: &mut Accumulator<T>) -> Sample<T> {
    buf.clear();
    family.curves_at(c, t, buf);
    let (class, winding) = (family.class(), family.winding());
    let boundary = t <= T::zero() || t >= hi;
    let src = if boundary { BoundSource::BoundaryCase { class, winding } } else { BoundSource::LocalOptimum { class, winding } };
    let mut ext = [T::neg_infinity(); 4];
    for p in buf.iter() {
        let b = pieces_bounds(c.p0, p);
        acc.add(&b, src);
        for (dir, e) in ext.iter_mut().enumerate() {
            *e = e.max(extent(&b, dir));
        }
    }
    acc.curves += buf.len();
    Sample { t, count: buf.len(), ext }
}

/// Samples one family on its outer parameter and adds every curve found to `acc`.
/// Returns `None` when the family has no curves at any sample.
pub fn trace_family<T: Scalar>(family: Family, ctx: &Ctx<T>, opts: &SweepOptions, acc: &mut Accumulator<T>) -> Option<Trace<T>> {
    let c = family.ctx(ctx);
    let hi = c.first_arc_max(family.first_turn())?;
    let mut buf = Vec::new();
    let n = if hi > T::zero() { opts.outer_samples.max(2) } else { 1 };
    let mut samples: Vec<Sample<T>> = (0..n)
        .map(|i| {
            let t = if n == 1 { T::zero() } else { hi * T::from_usize(i).unwrap() / T::from_usize(n - 1).unwrap() };
            eval_family(family, &c, hi, t, &mut buf, acc)
        })
        .collect();
    if samples.iter().all(|s| s.count == 0) {
        return None;
    }
    // chase branch ends between samples whose curve counts differ
    let mut extra = Vec::new();
    for w in samples.windows(2) {
        if w[0].count != w[1].count {
            let (mut a, mut b) = (w[0].t, w[1].t);
            for _ in 0..opts.gap_bisections {
                let m = (a + b) / T::lit(2.0);
                let s = eval_family(family, &c, hi, m, &mut buf, acc);
                if s.count == w[0].count {
                    a = m;
                } else {
                    b = m;
                }
                extra.push(s);
            }
        }
    }
    samples.extend(extra);
    samples.sort_by(|x, y| x.t.partial_cmp(&y.t).unwrap());
    Some(Trace { family, ctx: c, hi, samples })
}

/// Local maxima of `dir` extents: (value, spread to neighbours, bracket).
fn peaks_of<T: Scalar>(tr: &Trace<T>, dir: usize) -> Vec<(T, T, T, T)> {
    let sm = &tr.samples;
    let mut out = Vec::new();
    for i in 0..sm.len() {
        let v = sm[i].ext[dir];
        if !v.is_finite() {
            continue;
        }
        let l = if i > 0 { sm[i - 1].ext[dir] } else { T::neg_infinity() };
        let r = if i + 1 < sm.len() { sm[i + 1].ext[dir] } else { T::neg_infinity() };
        if v >= l && v >= r {
            let spread = [l, r].iter().filter(|x| x.is_finite()).map(|x| v - *x).fold(T::zero(), |a, b| a.max(b));
            let lo = if i > 0 { sm[i - 1].t } else { sm[i].t };
            let up = if i + 1 < sm.len() { sm[i + 1].t } else { sm[i].t };
            out.push((v, spread, lo, up));
        }
    }
    out.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
    out.truncate(2);
    out
}

/// Refines the sampled peaks of all traces, highest first, skipping peaks that
/// cannot reach the extent already known.
pub fn refine_traces<T: Scalar>(traces: &[Trace<T>], opts: &SweepOptions, acc: &mut Accumulator<T>) {
    let mut buf = Vec::new();
    for dir in 0..4 {
        let mut peaks: Vec<(T, T, T, T, usize)> = Vec::new();
        for (k, tr) in traces.iter().enumerate() {
            for p in peaks_of(tr, dir).into_iter().take(opts.refine_peaks) {
                peaks.push((p.0, p.1, p.2, p.3, k));
            }
        }
        peaks.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
        for (v, spread, lo, up, k) in peaks {
            if up <= lo {
                continue;
            }
            let tr = &traces[k];
            if v + T::lit(2.0) * spread <= extent(&acc.bounds, dir) + T::tol(1e-9) * tr.ctx.ell {
                continue;
            }
            brent_max(|t| eval_family(tr.family, &tr.ctx, tr.hi, t, &mut buf, acc).ext[dir], lo, up, (up - lo) * T::tol(1e-7), opts.refine_iters);
        }
    }
}

/// Traces and refines one family on its own.
pub fn sweep_family<T: Scalar>(family: Family, ctx: &Ctx<T>, opts: &SweepOptions, acc: &mut Accumulator<T>) {
    if let Some(tr) = trace_family(family, ctx, opts, acc) {
        refine_traces(&[tr], opts, acc);
    }
}

/// Extreme configurations where both straight segments make mirror-image angles
/// with the axis `dir`, i.e. the middle circle's extreme point is tangent-critical.
pub fn symmetric_candidates<T: Scalar>(ctx: &Ctx<T>, d: Turn, m: Turn, a: Turn, dir: usize, acc: &mut Accumulator<T>) {
    let r = ctx.r;
    let rho = match dir {
        0 => T::FRAC_PI_2(),
        1 => -T::FRAC_PI_2(),
        2 => T::zero(),
        _ => T::PI(),
    };
    let rot = crate::dubins::RigidMotion { rotation: rho, translation: (T::zero(), T::zero()) };
    let q0 = rot.apply_pose(&ctx.p0);
    let q1 = rot.apply_pose(&ctx.p1);
    let (ds, ms, as_) = (d.sign::<T>(), m.sign::<T>(), a.sign::<T>());
    let c1 = q0.circle_center(d, r);
    let c5 = q1.circle_center(a, r);
    let eval = |beta: T| -> Option<InnerEval<T>> {
        let n1 = Vec2::normal(beta);
        let n2 = Vec2::normal(-beta);
        let rhs1 = n1.dot(c1) + (ms - ds) * r;
        let rhs2 = n2.dot(c5) - (as_ - ms) * r;
        let det = n1.x * n2.y - n1.y * n2.x;
        if det.abs() < T::lit(1e-12) {
            return None;
        }
        let c3 = Vec2::new((rhs1 * n2.y - n1.y * rhs2) / det, (n1.x * rhs2 - rhs1 * n2.x) / det);
        let s1 = Vec2::unit(beta).dot(c3 - c1);
        let s2 = Vec2::unit(-beta).dot(c5 - c3);
        if s1 < T::zero() || s2 < T::zero() {
            return None;
        }
        let a1 = wrap_2pi(ds * (beta - q0.heading));
        let a3 = wrap_2pi(ms * (-beta - beta));
        let a5 = wrap_2pi(as_ * (q1.heading + beta));
        let len = r * (a1 + a3 + a5) + s1 + s2;
        Some(InnerEval {
            resid: len - ctx.ell,
            arcs: [a1, a3, a5],
            pieces: [(ds * ctx.kappa, r * a1), (T::zero(), s1), (ms * ctx.kappa, r * a3), (T::zero(), s2), (as_ * ctx.kappa, r * a5)],
        })
    };
    let mut found = Vec::new();
    let eps = T::tol(1e-9);
    // beta in (0, pi) keeps the extreme point on the middle arc; pi/2 is singular
    for (lo, hi) in [(eps, T::FRAC_PI_2() - eps), (T::FRAC_PI_2() + eps, T::PI() - eps)] {
        let shifted = |t: T| eval(lo + t);
        inner_roots(shifted, hi - lo, 48, ctx.ftol(), &mut found);
    }
    let winding = Family::Cscsc { d, m, a }.winding();
    for p in &found {
        let b = pieces_bounds(ctx.p0, p);
        acc.add(&b, BoundSource::LocalOptimum { class: CurveClass::Cscsc, winding });
        acc.curves += 1;
    }
}
