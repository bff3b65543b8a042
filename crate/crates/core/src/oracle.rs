//! Brute-force verification: curve sampling for envelope audits and dense
//! trajectory propagation. Nothing here uses the envelope's bound formulas.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dubins::{dubins_word_pieces, propagate, OrientedPoint, Vec2, WordType};
use crate::envelope::{EnvelopeQuery, RectPatch};
use crate::qp::{QpInstance, Triplets};
use crate::transcription::{Mesh, NodeTrajectory, ProblemDef, State};
use nalgebra::{DMatrix, DVector};
use crate::scalar::{wrap_pi, Scalar};

/// Piecewise-constant-curvature curve from the query start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledCurve<T> {
    pub curvatures: Vec<T>,
    pub lengths: Vec<T>,
    /// Position and heading mismatch at the end pose.
    pub endpoint_error: (T, T),
}

impl<T: Scalar> SampledCurve<T> {
    pub fn length(&self) -> T {
        self.lengths.iter().fold(T::zero(), |a, &b| a + b)
    }

    /// Points spaced at most `step` apart along the curve, endpoints included.
    pub fn points(&self, start: OrientedPoint<T>, step: T) -> Vec<Vec2<T>> {
        let mut out = vec![start.pos()];
        let mut p = start;
        for (&k, &len) in self.curvatures.iter().zip(&self.lengths) {
            let n = (len / step).ceil().to_usize().unwrap_or(0).max(1);
            for i in 1..=n {
                let s = len * T::from_usize(i).unwrap() / T::from_usize(n).unwrap();
                out.push(propagate(p, k, s).pos());
            }
            p = propagate(p, k, len);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("sampling exhausted: {accepted} accepted out of {attempts} attempts")]
    SamplingExhausted { accepted: usize, attempts: usize },
}

/// How a sampled curve's structure was chosen.
#[derive(Clone, Copy, Debug)]
enum Mode {
    /// Random curvatures on a grid, last pieces solved.
    Shooting,
    /// A bang-bang word with five pieces, lengths solved.
    Word([i8; 5]),
    /// A Dubins word with two inserted pieces, lengths solved.
    Dubins,
}

const WORDS: [[i8; 5]; 16] = [
    [1, 0, 1, 0, 1],
    [1, 0, -1, 0, 1],
    [1, 0, 1, 0, -1],
    [1, 0, -1, 0, -1],
    [-1, 0, 1, 0, 1],
    [-1, 0, -1, 0, 1],
    [-1, 0, 1, 0, -1],
    [-1, 0, -1, 0, -1],
    [1, -1, 1, 0, 1],
    [1, -1, 1, 0, -1],
    [-1, 1, -1, 0, 1],
    [-1, 1, -1, 0, -1],
    [1, 0, 1, -1, 1],
    [-1, 0, 1, -1, 1],
    [1, 0, -1, 1, -1],
    [1, -1, 1, -1, 1],
];

/// Sampler settings.
#[derive(Clone, Copy, Debug)]
pub struct SamplerOptions {
    pub n_pieces: usize,
    /// Fraction of samples drawn from bang-bang words.
    pub word_fraction: f64,
    /// Fraction seeded from Dubins words.
    pub dubins_fraction: f64,
    pub curvature_levels: usize,
    pub max_attempts_per_sample: usize,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        Self { n_pieces: 5, word_fraction: 0.4, dubins_fraction: 0.2, curvature_levels: 9, max_attempts_per_sample: 200 }
    }
}

fn endpoint<T: Scalar>(start: OrientedPoint<T>, ks: &[T], ls: &[T]) -> OrientedPoint<T> {
    let mut p = start;
    for (&k, &l) in ks.iter().zip(ls) {
        p = propagate(p, k, l);
    }
    p
}

fn residual<T: Scalar>(q: &EnvelopeQuery<T>, ks: &[T], ls: &[T]) -> [f64; 4] {
    let e = endpoint(q.start, ks, ls);
    let total = ls.iter().fold(T::zero(), |a, &b| a + b);
    [e.x - q.end.x, e.y - q.end.y, wrap_pi(e.heading - q.end.heading) * q.radius(), total - q.arc_length].map(|v| v.to_f64().unwrap_or(f64::NAN))
}

fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for c in 0..4 {
        let p = (c..4).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if !(a[p][c].abs() > 1e-14) {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..4 {
            let f = a[r][c] / a[c][c];
            for k in c..4 {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = [0.0; 4];
    for c in (0..4).rev() {
        let s: f64 = (c + 1..4).map(|k| a[c][k] * x[k]).sum();
        x[c] = (b[c] - s) / a[c][c];
    }
    Some(x)
}

/// Minimum-norm Levenberg-Marquardt on `u`, mapped to a curve by `apply`.
/// Residual: end position, radius-scaled heading, total length.
fn solve_lm<T: Scalar>(q: &EnvelopeQuery<T>, mut u: Vec<f64>, apply: &dyn Fn(&[f64], &mut Vec<T>, &mut Vec<T>), tol: f64) -> Option<(Vec<T>, Vec<T>)> {
    let n = u.len();
    let mut ks = Vec::new();
    let mut ls = Vec::new();
    let mut eval = |u: &[f64]| -> [f64; 4] {
        apply(u, &mut ks, &mut ls);
        residual(q, &ks, &ls)
    };
    let sq = |f: &[f64; 4]| f.iter().map(|v| v * v).sum::<f64>();
    let mut f = eval(&u);
    let scale = q.arc_length.to_f64().unwrap().max(q.radius().to_f64().unwrap());
    let mut mu = 1e-6;
    let mut jac = vec![[0.0; 4]; n];
    for _ in 0..100 {
        let cost = sq(&f);
        if !cost.is_finite() {
            return None;
        }
        if f.iter().all(|v| v.abs() <= tol * scale) {
            let mut ks = Vec::new();
            let mut ls = Vec::new();
            apply(&u, &mut ks, &mut ls);
            return Some((ks, ls));
        }
        for c in 0..n {
            let h = 1e-7 * (1.0 + u[c].abs());
            let keep = u[c];
            u[c] = keep + h;
            let fp = eval(&u);
            u[c] = keep - h;
            let fm = eval(&u);
            u[c] = keep;
            for r in 0..4 {
                jac[c][r] = (fp[r] - fm[r]) / (2.0 * h);
            }
        }
        // J J^T, 4x4
        let mut jjt = [[0.0; 4]; 4];
        for i in 0..4 {
            for k in 0..4 {
                jjt[i][k] = (0..n).map(|c| jac[c][i] * jac[c][k]).sum();
            }
        }
        let trace = (0..4).map(|i| jjt[i][i]).sum::<f64>().max(1e-300);
        let mut accepted = false;
        for _ in 0..14 {
            let mut m = jjt;
            for i in 0..4 {
                m[i][i] += mu * trace;
            }
            if let Some(y) = solve4(m, f) {
                let cand: Vec<f64> = (0..n).map(|c| u[c] - (0..4).map(|r| jac[c][r] * y[r]).sum::<f64>()).collect();
                let fc = eval(&cand);
                if sq(&fc) < cost {
                    u = cand;
                    f = fc;
                    mu = (mu * 0.1).max(1e-15);
                    accepted = true;
                    break;
                }
            }
            mu *= 10.0;
        }
        if !accepted {
            return None;
        }
    }
    None
}

fn try_shooting<T: Scalar, R: Rng>(q: &EnvelopeQuery<T>, opts: &SamplerOptions, rng: &mut R) -> Option<SampledCurve<T>> {
    let n = opts.n_pieces.max(2);
    let ell = q.arc_length.to_f64().unwrap();
    let kap = q.kappa_max.to_f64().unwrap();
    let lv = opts.curvature_levels.max(2);
    // curvature seeds on a grid, lengths from a random split
    let mut u = Vec::with_capacity(2 * n);
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.02..1.0)).collect();
    let sw: f64 = w.iter().sum();
    for wi in &w {
        u.push((wi * ell / sw).sqrt());
    }
    for _ in 0..n {
        let g = 2.0 * rng.gen_range(0..lv) as f64 / (lv - 1) as f64 - 1.0;
        u.push(g.clamp(-0.999, 0.999).asin());
    }
    let apply = |u: &[f64], ks: &mut Vec<T>, ls: &mut Vec<T>| {
        ks.clear();
        ls.clear();
        for i in 0..n {
            ls.push(T::lit(u[i] * u[i]));
            ks.push(T::lit(kap * u[n + i].sin()));
        }
    };
    let (ks, ls) = solve_lm(q, u, &apply, 1e-12)?;
    finish(q, ks, ls)
}

fn try_word<T: Scalar, R: Rng>(q: &EnvelopeQuery<T>, word: [i8; 5], rng: &mut R) -> Option<SampledCurve<T>> {
    let kap = q.kappa_max.to_f64().unwrap();
    let ell = q.arc_length.to_f64().unwrap();
    let circle = 2.0 * std::f64::consts::PI / kap;
    let w: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..1.0f64).powi(2) + 1e-3).collect();
    let sw: f64 = w.iter().sum();
    let u: Vec<f64> = w.iter().map(|wi| (wi * ell / sw).sqrt()).collect();
    let apply = |u: &[f64], ks: &mut Vec<T>, ls: &mut Vec<T>| {
        ks.clear();
        ls.clear();
        for i in 0..5 {
            ks.push(T::lit(word[i] as f64 * kap));
            ls.push(T::lit(u[i] * u[i]));
        }
    };
    let (ks, ls) = solve_lm(q, u, &apply, 1e-12)?;
    // arcs beyond a full turn only add loops
    if ks.iter().zip(&ls).any(|(k, l)| *k != T::zero() && l.to_f64().unwrap() >= circle) {
        return None;
    }
    finish(q, ks, ls)
}

fn try_dubins<T: Scalar, R: Rng>(q: &EnvelopeQuery<T>, rng: &mut R) -> Option<SampledCurve<T>> {
    let kap = q.kappa_max.to_f64().unwrap();
    let ell = q.arc_length.to_f64().unwrap();
    let circle = 2.0 * std::f64::consts::PI / kap;
    let words: Vec<[(T, T); 3]> = WordType::ALL.iter().filter_map(|&w| dubins_word_pieces(&q.start, &q.end, q.kappa_max, w)).collect();
    let base = words[rng.gen_range(0..words.len())];
    let mut pieces: Vec<(f64, f64)> = base.iter().map(|(k, l)| (k.to_f64().unwrap(), l.to_f64().unwrap())).collect();
    let base_len: f64 = pieces.iter().map(|p| p.1).sum();
    let slack = ell - base_len;
    if slack < -1e-9 * ell {
        return None;
    }
    for _ in 0..2 {
        let k = kap * [-1.0, 0.0, 1.0][rng.gen_range(0..3)];
        let at = rng.gen_range(0..=pieces.len());
        pieces.insert(at, (k, rng.gen_range(0.0..1.0) * slack.max(0.0) * 0.5));
    }
    let ks0: Vec<f64> = pieces.iter().map(|p| p.0).collect();
    let u: Vec<f64> = pieces.iter().map(|p| (p.1 + 1e-6 * ell).sqrt()).collect();
    let apply = |u: &[f64], ks: &mut Vec<T>, ls: &mut Vec<T>| {
        ks.clear();
        ls.clear();
        for i in 0..u.len() {
            ks.push(T::lit(ks0[i]));
            ls.push(T::lit(u[i] * u[i]));
        }
    };
    let (ks, ls) = solve_lm(q, u, &apply, 1e-12)?;
    if ks.iter().zip(&ls).any(|(k, l)| *k != T::zero() && l.to_f64().unwrap() >= circle) {
        return None;
    }
    finish(q, ks, ls)
}

fn finish<T: Scalar>(q: &EnvelopeQuery<T>, ks: Vec<T>, ls: Vec<T>) -> Option<SampledCurve<T>> {
    if ks.iter().any(|k| k.abs() > q.kappa_max * (T::one() + T::tol(1e-12))) || ls.iter().any(|l| *l < T::zero()) {
        return None;
    }
    let e = endpoint(q.start, &ks, &ls);
    let pos = (e.pos() - q.end.pos()).norm();
    let hd = wrap_pi(e.heading - q.end.heading).abs();
    Some(SampledCurve { curvatures: ks, lengths: ls, endpoint_error: (pos, hd) })
}

/// Rejection/shooting sampler of curves of the query's length joining its poses.
pub fn sample_feasible_curves<T: Scalar, R: Rng>(
    query: &EnvelopeQuery<T>,
    n_samples: usize,
    endpoint_tol: (T, T),
    opts: &SamplerOptions,
    rng: &mut R,
) -> Result<Vec<SampledCurve<T>>, OracleError> {
    let mut out = Vec::with_capacity(n_samples);
    let mut attempts = 0usize;
    let budget = n_samples.max(1) * opts.max_attempts_per_sample;
    let pos_tol = endpoint_tol.0 * query.arc_length;
    while out.len() < n_samples && attempts < budget {
        attempts += 1;
        let roll: f64 = rng.gen_range(0.0..1.0);
        let mode = if roll < opts.word_fraction {
            Mode::Word(WORDS[rng.gen_range(0..WORDS.len())])
        } else if roll < opts.word_fraction + opts.dubins_fraction {
            Mode::Dubins
        } else {
            Mode::Shooting
        };
        let c = match mode {
            Mode::Shooting => try_shooting(query, opts, rng),
            Mode::Word(w) => try_word(query, w, rng),
            Mode::Dubins => try_dubins(query, rng),
        };
        if let Some(c) = c {
            if c.endpoint_error.0 <= pos_tol && c.endpoint_error.1 <= endpoint_tol.1 {
                out.push(c);
            }
        }
    }
    if out.len() < n_samples && (out.len() as f64) < 1e-6 * attempts as f64 {
        return Err(OracleError::SamplingExhausted { accepted: out.len(), attempts });
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub curves: usize,
    pub points_checked: usize,
    pub violations: usize,
    /// Largest distance of an uncovered point from the patch union.
    pub worst_distance: f64,
    pub worst_point: Option<(f64, f64)>,
}

/// Distance from a world point to a patch (zero inside).
pub fn patch_distance<T: Scalar>(patch: &RectPatch<T>, p: Vec2<T>) -> T {
    let q = patch.to_world.inverse().apply(p);
    let dx = (patch.x_min - q.x).max(q.x - patch.x_max).max(T::zero());
    let dy = (patch.y_min - q.y).max(q.y - patch.y_max).max(T::zero());
    dx.hypot(dy)
}

/// Checks every point (step ell/1000) of every curve against the patch union grown by `pad_rel * ell`.
pub fn audit_patch_cover<T: Scalar>(query: &EnvelopeQuery<T>, patches: &[RectPatch<T>], curves: &[SampledCurve<T>], pad_rel: T) -> AuditReport {
    let step = query.arc_length / T::lit(1000.0);
    let pad = pad_rel * query.arc_length;
    let mut rep = AuditReport { curves: curves.len(), ..Default::default() };
    for c in curves {
        for p in c.points(query.start, step) {
            rep.points_checked += 1;
            let d = patches.iter().map(|pt| patch_distance(pt, p)).fold(T::infinity(), |a, b| a.min(b));
            if d > pad {
                rep.violations += 1;
                let df = d.to_f64().unwrap();
                if df > rep.worst_distance {
                    rep.worst_distance = df;
                    rep.worst_point = Some((p.x.to_f64().unwrap(), p.y.to_f64().unwrap()));
                }
            }
        }
    }
    rep
}


/// Exact QP solution by enumerating every active set of the inequalities.
/// Returns the feasible KKT point with the lowest objective. Intended for
/// small strictly convex instances (a handful of inequalities).
pub fn qp_active_set(inst: &QpInstance) -> Option<(Vec<f64>, f64)> {
    let n = inst.n();
    let a = inst.a_eq.to_dense();
    let g = inst.g.to_dense();
    let p = inst.p.to_dense();
    let (me, mi) = (a.len(), g.len());
    let mut best: Option<(Vec<f64>, f64)> = None;
    for mask in 0u32..(1 << mi) {
        let act: Vec<usize> = (0..mi).filter(|i| mask & (1 << i) != 0).collect();
        let m = me + act.len();
        if m > n {
            continue;
        }
        let mut k = DMatrix::<f64>::zeros(n + m, n + m);
        let mut rhs = DVector::<f64>::zeros(n + m);
        for i in 0..n {
            for j in 0..n {
                k[(i, j)] = p[i][j];
            }
            rhs[i] = -inst.q[i];
        }
        let rows = a.iter().zip(&inst.b_eq).chain(act.iter().map(|&i| (&g[i], &inst.h[i])));
        for (r, (row, &b)) in rows.enumerate() {
            for j in 0..n {
                k[(n + r, j)] = row[j];
                k[(j, n + r)] = row[j];
            }
            rhs[n + r] = b;
        }
        let Some(sol) = k.clone().lu().solve(&rhs) else { continue };
        // singular systems can still produce a finite, meaningless solve
        if (&k * &sol - &rhs).amax() > 1e-9 * (1.0 + rhs.amax()) {
            continue;
        }
        let x: Vec<f64> = sol.rows(0, n).iter().copied().collect();
        if !x.iter().all(|v| v.is_finite()) {
            continue;
        }
        let feasible = g.iter().zip(&inst.h).all(|(row, &h)| row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() <= h + 1e-9);
        let dual_ok = (0..act.len()).all(|i| sol[n + me + i] >= -1e-9);
        if feasible && dual_ok {
            let f = inst.objective(&x);
            if best.as_ref().map_or(true, |b| f < b.1) {
                best = Some((x, f));
            }
        }
    }
    best
}

/// Random strictly convex, feasible QP with at most `n_max` variables and
/// `mi_max` inequalities.
pub fn random_qp<R: Rng>(rng: &mut R, n_max: usize, mi_max: usize) -> QpInstance {
    let n = rng.gen_range(2..=n_max);
    let me = rng.gen_range(0..=3.min(n - 1));
    let mi = rng.gen_range(0..=mi_max);
    let k = rng.gen_range(1..=n);
    let m: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let mut p = Triplets::new(n, n);
    for i in 0..n {
        for j in 0..n {
            let v: f64 = m.iter().map(|r| r[i] * r[j]).sum::<f64>() + if i == j { 0.1 } else { 0.0 };
            p.push(i, j, v);
        }
    }
    let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let dot = |r: &Vec<f64>| r.iter().zip(&x0).map(|(a, b)| a * b).sum::<f64>();
    let a: Vec<Vec<f64>> = (0..me).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let g: Vec<Vec<f64>> = (0..mi).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let scale = rng.gen_range(1.0..5.0);
    QpInstance {
        p,
        q: (0..n).map(|_| scale * rng.gen_range(-1.0..1.0)).collect(),
        b_eq: a.iter().map(dot).collect(),
        h: g.iter().map(|r| dot(r) + rng.gen_range(0.0..1.0)).collect(),
        a_eq: Triplets::from_dense(&a, n),
        g: Triplets::from_dense(&g, n),
    }
}

/// Dense forward integration of a node trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseProfile {
    /// (t, state) samples, interval by interval.
    pub samples: Vec<(f64, State)>,
    /// Smallest signed distance to each region's boundary.
    pub min_clearance: Vec<f64>,
    /// Largest distance between an integrated interval end and the next node.
    pub max_node_gap: f64,
}

impl DenseProfile {
    pub fn worst_clearance(&self) -> f64 {
        self.min_clearance.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Classical RK4 of the constant-speed model with the control linear in time
/// between nodes. Each interval restarts from its own node.
pub fn propagate_dense(traj: &NodeTrajectory, mesh: &Mesh, problem: &ProblemDef, steps_per_interval: usize) -> DenseProfile {
    let v = problem.v;
    let f = |z: &State, u: f64| -> State { [v * z[2].cos(), v * z[2].sin(), u / v] };
    let steps = steps_per_interval.max(1);
    let mut samples = Vec::with_capacity(mesh.intervals() * steps + 1);
    let mut min_clearance = vec![f64::INFINITY; problem.nfz.len()];
    let mut max_node_gap = 0.0f64;
    let mut record = |t: f64, z: State, samples: &mut Vec<(f64, State)>| {
        for (m, c) in min_clearance.iter_mut().zip(&problem.nfz) {
            *m = m.min((z[0] - c.center.0).hypot(z[1] - c.center.1) - c.radius);
        }
        samples.push((t, z));
    };
    for j in 0..mesh.intervals() {
        let (t0, t1) = (traj.time_at(mesh.tau()[j]), traj.time_at(mesh.tau()[j + 1]));
        let (u0, u1) = (traj.controls[j], traj.controls[j + 1]);
        let u = |t: f64| u0 + (u1 - u0) * (t - t0) / (t1 - t0);
        let h = (t1 - t0) / steps as f64;
        let mut z = traj.states[j];
        if j == 0 {
            record(t0, z, &mut samples);
        }
        for i in 0..steps {
            let t = t0 + i as f64 * h;
            let add = |a: &State, k: &State, s: f64| [a[0] + s * k[0], a[1] + s * k[1], a[2] + s * k[2]];
            let k1 = f(&z, u(t));
            let k2 = f(&add(&z, &k1, h / 2.0), u(t + h / 2.0));
            let k3 = f(&add(&z, &k2, h / 2.0), u(t + h / 2.0));
            let k4 = f(&add(&z, &k3, h), u(t + h));
            z = [0, 1, 2].map(|c| z[c] + h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]));
            record(if i + 1 == steps { t1 } else { t + h }, z, &mut samples);
        }
        let n = traj.states[j + 1];
        max_node_gap = max_node_gap.max((z[0] - n[0]).hypot(z[1] - n[1]));
    }
    DenseProfile { samples, min_clearance, max_node_gap }
}
