//! Length equations for symmetric CSCSC configurations with left outer circles
//! at equal height, parametrized by the middle-circle center height `h`.

use serde::{Deserialize, Serialize};

use crate::roots::{newton_bisect, RootError};
use crate::scalar::{wrap_2pi, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Winding {
    /// Middle circle turns against the outer two.
    MiddleOpposite,
    /// All three circles turn the same way.
    AllSame,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthEquationCase<T> {
    /// Horizontal distance between the two left-circle centers.
    pub x: T,
    pub phi1: T,
    pub phi2: T,
    pub r: T,
    pub ell: T,
    pub winding: Winding,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum LengthEqError {
    #[error("no admissible root for this case")]
    Infeasible,
    #[error("root iteration did not converge")]
    NoConvergence,
}

/// Which root to return when several exist.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Upper,
    Lower,
}

/// Tangent heading of the first straight segment.
pub fn lambda<T: Scalar>(case: &LengthEquationCase<T>, h: T) -> Option<T> {
    let two = T::lit(2.0);
    let u = h - case.r;
    let slope = (two * u).atan2(case.x);
    match case.winding {
        Winding::MiddleOpposite => {
            let d = (case.x * case.x / T::lit(4.0) + u * u).sqrt();
            let ratio = two * case.r / d;
            if ratio > T::one() {
                return None;
            }
            Some(ratio.asin() + slope)
        }
        Winding::AllSame => Some(slope),
    }
}

/// Residual `f(h)` and its derivative away from wrap points.
/// `None` where the square-root argument is negative.
pub fn residual<T: Scalar>(case: &LengthEquationCase<T>, h: T) -> Option<(T, T)> {
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let r = case.r;
    let u = h - r;
    let d2 = case.x * case.x / four + u * u;
    let lam = lambda(case, h)?;
    let outer = wrap_2pi(lam - case.phi1) + wrap_2pi(lam + case.phi2);
    let dslope = case.x / (two * d2);
    match case.winding {
        Winding::MiddleOpposite => {
            let q = d2 - four * r * r;
            if q < T::zero() {
                return None;
            }
            let sq = q.sqrt();
            let f = two * sq + r * (wrap_2pi(two * lam) + outer) - case.ell;
            let dlam = if sq > T::zero() { -two * r * u / (d2 * sq) + dslope } else { T::infinity() };
            let df = if sq > T::zero() { two * u / sq + four * r * dlam } else { T::infinity() };
            Some((f, df))
        }
        Winding::AllSame => {
            let d = d2.sqrt();
            let f = two * d + r * (wrap_2pi(T::two_pi() - two * lam) + outer) - case.ell;
            let df = if d > T::zero() { two * u / d } else { T::zero() };
            Some((f, df))
        }
    }
}

/// Edge of the admissible `h` domain nearest to `r` on each side (opposite winding only).
fn domain_edges<T: Scalar>(case: &LengthEquationCase<T>) -> Option<(T, T)> {
    if case.winding == Winding::AllSame {
        return None;
    }
    let q = T::lit(4.0) * case.r * case.r - case.x * case.x / T::lit(4.0);
    if q <= T::zero() {
        return None;
    }
    let w = q.sqrt();
    Some((case.r - w, case.r + w))
}

/// Branch indices of the wrapped angles; `f` is continuous where they are constant.
fn wrap_branches<T: Scalar>(case: &LengthEquationCase<T>, h: T) -> Option<[T; 3]> {
    let lam = lambda(case, h)?;
    let two = T::lit(2.0);
    let k = |a: T| (a / T::two_pi()).floor();
    let mid = match case.winding {
        Winding::MiddleOpposite => two * lam,
        Winding::AllSame => T::two_pi() - two * lam,
    };
    Some([k(lam - case.phi1), k(lam + case.phi2), k(mid)])
}

/// Brackets each wrap jump between grid samples with a pair of close samples.
fn split_at_wraps<T: Scalar>(case: &LengthEquationCase<T>, xs: &[T], nudge: T) -> Vec<T> {
    let mut out = xs.to_vec();
    for w in xs.windows(2) {
        let (Some(ba), Some(bb)) = (wrap_branches(case, w[0]), wrap_branches(case, w[1])) else { continue };
        if ba == bb {
            continue;
        }
        let (mut a, mut b) = (w[0], w[1]);
        for _ in 0..200 {
            if b - a <= nudge {
                break;
            }
            let m = (a + b) / T::lit(2.0);
            match wrap_branches(case, m) {
                Some(bm) if bm == ba => a = m,
                Some(_) => b = m,
                None => break,
            }
        }
        out.push(a);
        out.push(b);
    }
    out.sort_by(|p, q| p.partial_cmp(q).unwrap());
    out
}

/// Every root on `[-ell, ell + 2r]`, ascending.
pub fn length_eq_roots<T: Scalar>(case: &LengthEquationCase<T>) -> Result<Vec<T>, LengthEqError> {
    let lo = -case.ell;
    let hi = case.ell + T::lit(2.0) * case.r;
    let n = 64;
    let mut xs: Vec<T> = (0..n).map(|i| lo + (hi - lo) * T::from_usize(i).unwrap() / T::from_usize(n - 1).unwrap()).collect();
    if let Some((a, b)) = domain_edges(case) {
        let nudge = T::tol(1e-13) * (case.ell + case.r);
        xs.push(a - nudge);
        xs.push(b + nudge);
        xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    }
    let xs = split_at_wraps(case, &xs, T::tol(1e-12) * (case.ell + case.r));
    let scale = case.ell.max(case.r);
    let ftol = T::tol(1e-9) * scale;
    let mut roots: Vec<T> = Vec::new();
    let mut prev: Option<(T, T)> = None;
    let mut failed = false;
    for &h in &xs {
        let f = residual(case, h).map(|v| v.0);
        match f {
            Some(fv) if fv.is_finite() => {
                if fv.abs() <= ftol * T::lit(1e-3) {
                    roots.push(h);
                } else if let Some((ph, pf)) = prev {
                    if pf.signum() != fv.signum() && pf.abs() > ftol * T::lit(1e-3) {
                        let x0 = (ph + h) / T::lit(2.0);
                        let res = newton_bisect(|t| residual(case, t).unwrap_or((T::nan(), T::nan())), ph, h, x0, ftol * T::lit(1e-3), 200);
                        match res {
                            Ok(t) => {
                                // a sign change across a wrap jump is not a root
                                if residual(case, t).map_or(false, |v| v.0.abs() <= ftol) {
                                    roots.push(t);
                                }
                            }
                            Err(RootError::NoConvergence(_)) => failed = true,
                            Err(RootError::NoBracket) => {}
                        }
                    }
                }
                prev = Some((h, fv));
            }
            _ => prev = None,
        }
    }
    if roots.is_empty() && failed {
        return Err(LengthEqError::NoConvergence);
    }
    roots.sort_by(|p, q| p.partial_cmp(q).unwrap());
    roots.dedup_by(|p, q| (*p - *q).abs() <= ftol);
    Ok(roots)
}

fn pick<T: Scalar>(case: &LengthEquationCase<T>, branch: Branch) -> Result<T, LengthEqError> {
    let roots = length_eq_roots(case)?;
    match branch {
        Branch::Upper => roots.last().copied(),
        Branch::Lower => roots.first().copied(),
    }
    .ok_or(LengthEqError::Infeasible)
}

/// Root of the opposite-winding equation on the requested branch.
pub fn solve_length_eq_opposite_branch<T: Scalar>(case: &LengthEquationCase<T>, branch: Branch) -> Result<T, LengthEqError> {
    pick(&LengthEquationCase { winding: Winding::MiddleOpposite, ..*case }, branch)
}

/// Root of the same-winding equation on the requested branch.
pub fn solve_length_eq_same_branch<T: Scalar>(case: &LengthEquationCase<T>, branch: Branch) -> Result<T, LengthEqError> {
    pick(&LengthEquationCase { winding: Winding::AllSame, ..*case }, branch)
}

/// Upper-branch root of the opposite-winding equation.
pub fn solve_length_eq_opposite<T: Scalar>(case: &LengthEquationCase<T>) -> Result<T, LengthEqError> {
    solve_length_eq_opposite_branch(case, Branch::Upper)
}

/// Upper-branch root of the same-winding equation.
pub fn solve_length_eq_same<T: Scalar>(case: &LengthEquationCase<T>) -> Result<T, LengthEqError> {
    solve_length_eq_same_branch(case, Branch::Upper)
}

/// Five (signed curvature, length) pieces of the curve described by a root,
/// starting at the canonical start pose. Left outer circles, `kappa = 1/r`.
pub fn root_pieces<T: Scalar>(case: &LengthEquationCase<T>, h: T) -> Option<[(T, T); 5]> {
    let two = T::lit(2.0);
    let r = case.r;
    let k = T::one() / r;
    let lam = lambda(case, h)?;
    let u = h - r;
    let d2 = case.x * case.x / T::lit(4.0) + u * u;
    let (s, mid_k, mid_arc) = match case.winding {
        Winding::MiddleOpposite => {
            let q = d2 - T::lit(4.0) * r * r;
            if q < T::zero() {
                return None;
            }
            (q.sqrt(), -k, wrap_2pi(two * lam))
        }
        Winding::AllSame => (d2.sqrt(), k, wrap_2pi(T::two_pi() - two * lam)),
    };
    Some([
        (k, r * wrap_2pi(lam - case.phi1)),
        (T::zero(), s),
        (mid_k, r * mid_arc),
        (T::zero(), s),
        (k, r * wrap_2pi(lam + case.phi2)),
    ])
}
