//! Scalar root finding and one-dimensional maximization.

use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum RootError {
    #[error("no sign change in the bracket")]
    NoBracket,
    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),
}

/// Newton's method kept inside `[lo, hi]`, falling back to bisection whenever
/// the Newton step leaves the bracket or fails to shrink the residual enough.
/// `f` returns the value and derivative. Requires a sign change on the bracket.
pub fn newton_bisect<T: Scalar, F>(mut f: F, lo: T, hi: T, x0: T, ftol: T, max_iter: usize) -> Result<T, RootError>
where
    F: FnMut(T) -> (T, T),
{
    let (mut a, mut b) = (lo, hi);
    let (fa, _) = f(a);
    let (fb, _) = f(b);
    if fa == T::zero() {
        return Ok(a);
    }
    if fb == T::zero() {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(RootError::NoBracket);
    }
    let neg_at_a = fa < T::zero();
    let half = T::lit(0.5);
    let mut x = if x0 > a && x0 < b { x0 } else { (a + b) * half };
    let mut prev_width = b - a;
    for _ in 0..max_iter {
        let (fx, dfx) = f(x);
        if !fx.is_finite() {
            x = (a + b) * half;
            continue;
        }
        if fx.abs() <= ftol {
            return Ok(x);
        }
        if (fx < T::zero()) == neg_at_a {
            a = x;
        } else {
            b = x;
        }
        let width = b - a;
        if width <= T::epsilon() * (a.abs().max(b.abs()).max(T::one())) {
            return Ok(x);
        }
        let newton = x - fx / dfx;
        let ok = dfx != T::zero() && newton.is_finite() && newton > a && newton < b && width < prev_width * T::lit(0.75);
        prev_width = width;
        x = if ok { newton } else { (a + b) * half };
    }
    Err(RootError::NoConvergence(max_iter))
}

/// Plain bisection on a sign change, run to machine precision.
pub fn bisect<T: Scalar, F: FnMut(T) -> T>(mut f: F, lo: T, hi: T, max_iter: usize) -> Result<T, RootError> {
    let (mut a, mut b) = (lo, hi);
    let fa = f(a);
    let fb = f(b);
    if fa == T::zero() {
        return Ok(a);
    }
    if fb == T::zero() {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(RootError::NoBracket);
    }
    let neg_at_a = fa < T::zero();
    for _ in 0..max_iter {
        let m = (a + b) * T::lit(0.5);
        if m <= a || m >= b {
            return Ok(m);
        }
        let fm = f(m);
        if fm == T::zero() {
            return Ok(m);
        }
        if (fm < T::zero()) == neg_at_a {
            a = m;
        } else {
            b = m;
        }
    }
    Ok((a + b) * T::lit(0.5))
}

/// Illinois false position on a sign-changing bracket; stops at `|f| <= ftol`.
/// Non-finite values fall back to a bisection step.
pub fn illinois<T: Scalar, F: FnMut(T) -> T>(mut f: F, lo: T, hi: T, ftol: T, max_iter: usize) -> Result<T, RootError> {
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa.abs() <= ftol {
        return Ok(a);
    }
    if fb.abs() <= ftol {
        return Ok(b);
    }
    if !(fa.signum() != fb.signum()) {
        return Err(RootError::NoBracket);
    }
    let mut side = 0i8;
    for _ in 0..max_iter {
        let mut x = (a * fb - b * fa) / (fb - fa);
        if !(x > a && x < b) {
            x = (a + b) * T::lit(0.5);
        }
        let mut fx = f(x);
        if !fx.is_finite() {
            x = (a + b) * T::lit(0.5);
            fx = f(x);
            if !fx.is_finite() {
                return Err(RootError::NoConvergence(max_iter));
            }
        }
        if fx.abs() <= ftol || b - a <= T::epsilon() * (a.abs() + b.abs()) {
            return Ok(x);
        }
        if fx.signum() == fb.signum() {
            b = x;
            fb = fx;
            if side == 1 {
                fa = fa * T::lit(0.5);
            }
            side = 1;
        } else {
            a = x;
            fa = fx;
            if side == -1 {
                fb = fb * T::lit(0.5);
            }
            side = -1;
        }
    }
    Err(RootError::NoConvergence(max_iter))
}

/// Locates the boundary of a predicate that holds at `lo` and fails at `hi`.
/// Returns the last point known to satisfy it.
pub fn bisect_predicate<T: Scalar, F: FnMut(T) -> bool>(mut holds: F, lo: T, hi: T, iters: usize) -> T {
    let (mut a, mut b) = (lo, hi);
    for _ in 0..iters {
        let m = (a + b) * T::lit(0.5);
        if m <= a.min(b) || m >= a.max(b) {
            break;
        }
        if holds(m) {
            a = m;
        } else {
            b = m;
        }
    }
    a
}

/// Sub-intervals of `[lo, hi]` over which `f` changes sign, found on a uniform grid.
/// Non-finite samples break brackets.
pub fn scan_brackets<T: Scalar, F: FnMut(T) -> T>(mut f: F, lo: T, hi: T, n: usize) -> Vec<(T, T)> {
    let mut out = Vec::new();
    let step = (hi - lo) / T::from_usize(n - 1).unwrap();
    let mut prev: Option<(T, T)> = None;
    for i in 0..n {
        let x = if i + 1 == n { hi } else { lo + step * T::from_usize(i).unwrap() };
        let fx = f(x);
        if fx.is_finite() {
            if let Some((px, pf)) = prev {
                if pf == T::zero() || pf.signum() != fx.signum() {
                    out.push((px, x));
                }
            }
            prev = Some((x, fx));
        } else {
            prev = None;
        }
    }
    out
}

/// Brent's parabolic/golden maximization on `[lo, hi]`. Non-finite values count as
/// very small. Returns the best point seen.
pub fn brent_max<T: Scalar, F: FnMut(T) -> T>(mut f: F, lo: T, hi: T, xtol: T, max_iter: usize) -> (T, T) {
    let cg = T::lit(0.381_966_011_250_105_1);
    let huge = T::max_value() / T::lit(16.0);
    let mut g = |x: T| {
        let v = f(x);
        if v.is_finite() {
            (-v, v)
        } else {
            (huge, v)
        }
    };
    let (mut a, mut b) = (lo, hi);
    let mut x = a + cg * (b - a);
    let (mut w, mut v) = (x, x);
    let (gx, fx0) = g(x);
    let (mut fx, mut fw, mut fv) = (gx, gx, gx);
    let mut best = (x, fx0);
    let (mut d, mut e) = (T::zero(), T::zero());
    let half = T::lit(0.5);
    for _ in 0..max_iter {
        let m = half * (a + b);
        let tol = xtol + T::epsilon().sqrt() * x.abs() * T::lit(1e-4);
        let t2 = T::lit(2.0) * tol;
        if (x - m).abs() <= t2 - half * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = T::lit(2.0) * (q - r);
            if q > T::zero() {
                p = -p;
            }
            q = q.abs();
            if p.abs() < (half * q * e).abs() && p > q * (a - x) && p < q * (b - x) && p.is_finite() && q.is_finite() {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < t2 || b - u < t2 {
                    d = if x < m { tol } else { -tol };
                }
                golden = false;
            }
        }
        if golden {
            e = if x < m { b - x } else { a - x };
            d = cg * e;
        }
        let u = if d.abs() >= tol { x + d } else if d > T::zero() { x + tol } else { x - tol };
        let (fu, raw) = g(u);
        if raw.is_finite() && (!best.1.is_finite() || raw > best.1) {
            best = (u, raw);
        }
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    best
}

/// Golden-section search for a maximum of `f` on `[lo, hi]`.
/// Returns `(argmax, max)` over every point evaluated.
pub fn golden_max<T: Scalar, F: FnMut(T) -> T>(mut f: F, lo: T, hi: T, iters: usize) -> (T, T) {
    let g = T::lit(0.618_033_988_749_894_8);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut best = if fc >= fd { (c, fc) } else { (d, fd) };
    for _ in 0..iters {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
            if fc > best.1 {
                best = (c, fc);
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
            if fd > best.1 {
                best = (d, fd);
            }
        }
        if b - a <= T::epsilon() * (a.abs() + b.abs() + T::one()) {
            break;
        }
    }
    best
}
