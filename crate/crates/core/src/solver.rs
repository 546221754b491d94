//! Periodic-orbit solver: realizes an admissible symbol word as the
//! stationary point of the polygonal length functional over bounce positions.
//!
//! Bounce positions are optimized in arclength with exact unit-speed boundary
//! jets, so the gradient is the classical generating-function differential
//! (sine of incoming minus outgoing angle at each bounce) and the Hessian is
//! cyclic-tridiagonal. Newton runs at 64 bits first, then the mantissa is
//! doubled until the requested precision is reached, polishing at each rung.

use rug::ops::CompleteRound;
use rug::Float;

use crate::dynamics::{
    chord_frame, free_flight, monodromy, Flight, Monodromy, PhasePoint,
};
use crate::error::Error;
use crate::geometry::{min_pairwise_gap, ConvexObstacle};
use crate::real::{eps, fl, to_decimal, P2};
use crate::symbolic::Word;

/// Options controlling a periodic-orbit solve; the defaults are deterministic.
#[derive(Clone, Debug)]
pub struct SolveOptions {
    /// Newton iteration budget per precision rung.
    pub max_iter: usize,
    /// Override the word-aware initialization (arclengths, one per bounce).
    pub initial_s: Option<Vec<f64>>,
    /// Verify the realized itinerary by exact ray casting after convergence.
    pub check_itinerary: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iter: 200,
            initial_s: None,
            check_itinerary: true,
        }
    }
}

/// A converged periodic orbit: phase points in word order, total length and
/// the residuals certifying stationarity and the reflection law.
#[derive(Clone, Debug)]
pub struct PeriodicOrbit {
    pub word: Word,
    pub points: Vec<PhasePoint>,
    pub length: Float,
    pub gradient_norm: Float,
    pub reflection_residual: Float,
    pub precision: u32,
}

impl PeriodicOrbit {
    pub fn period(&self) -> usize {
        self.points.len()
    }

    /// Monodromy and Lyapunov data along this orbit.
    pub fn monodromy(&self, obstacles: &[ConvexObstacle], prec: u32) -> Result<Monodromy, Error> {
        monodromy(obstacles, &self.points, prec)
    }

    /// Serializes the orbit: word, per-bounce (obstacle, s, phi), decimal
    /// length at full precision, residuals and mantissa size.
    pub fn to_json(&self) -> String {
        let bounces: Vec<serde_json::Value> = self
            .points
            .iter()
            .map(|p| {
                serde_json::json!({
                    "obstacle": p.obstacle + 1,
                    "s": to_decimal(&p.s),
                    "phi": to_decimal(&p.phi),
                })
            })
            .collect();
        serde_json::json!({
            "word": self.word.to_string(),
            "bounces": bounces,
            "length": to_decimal(&self.length),
            "gradient_norm": self.gradient_norm.to_f64(),
            "reflection_residual": self.reflection_residual.to_f64(),
            "precision_bits": self.precision,
        })
        .to_string()
    }
}

/// Unit-speed boundary jet at arclength s: position, tangent, and the
/// second derivative -kappa n of the position with respect to arclength.
struct BoundaryJet {
    pos: P2,
    tan: P2,
    acc: P2,
}

fn boundary_jet(ob: &ConvexObstacle, s: &Float, prec: u32) -> BoundaryJet {
    let t = ob.t_of_s(s, prec);
    let pos = ob.point(&t, prec);
    let tan = ob.d1(&t, prec).normalize();
    let kappa = ob.curvature_t(&t, prec);
    let n = tan.rot_cw();
    let neg_kappa = -kappa;
    let acc = n.scale(&neg_kappa);
    BoundaryJet { pos, tan, acc }
}

/// All partial derivatives of one chord h(s_a, s_b) with respect to the two
/// arclengths, computed from unit-speed jets.
struct ChordPartials {
    h: Float,
    da: Float,
    db: Float,
    daa: Float,
    dbb: Float,
    dab: Float,
}

fn chord_partials(a: &BoundaryJet, b: &BoundaryJet, prec: u32) -> ChordPartials {
    let v = a.pos.sub(&b.pos);
    let h = v.norm();
    let ta_v = a.tan.dot(&v);
    let tb_v = b.tan.dot(&v);
    let h3 = ((&h * &h).complete(prec)) * &h;
    let da = (&ta_v / &h).complete(prec);
    let db = -(&tb_v / &h).complete(prec);
    let daa = (a.acc.dot(&v) + 1u32) / &h - (&ta_v * &ta_v).complete(prec) / &h3;
    let dbb = (1u32 - b.acc.dot(&v)) / &h - (&tb_v * &tb_v).complete(prec) / &h3;
    let dab = (&ta_v * &tb_v).complete(prec) / &h3 - a.tan.dot(&b.tan) / &h;
    ChordPartials {
        h,
        da,
        db,
        daa,
        dbb,
        dab,
    }
}

/// Length, gradient and cyclic-tridiagonal Hessian of the polygonal length
/// functional at the given arclength vector.
struct Functional {
    length: Float,
    grad: Vec<Float>,
    diag: Vec<Float>,
    /// off[k] couples s_k and s_{k+1 mod p} through the chord between them.
    off: Vec<Float>,
}

fn evaluate(
    obstacles: &[ConvexObstacle],
    word: &Word,
    s: &[Float],
    prec: u32,
) -> Functional {
    let p = s.len();
    let jets: Vec<BoundaryJet> = (0..p)
        .map(|k| boundary_jet(&obstacles[word.symbols()[k] as usize - 1], &s[k], prec))
        .collect();
    let mut length = Float::new(prec);
    let mut grad = vec![Float::new(prec); p];
    let mut diag = vec![Float::new(prec); p];
    let mut off = vec![Float::new(prec); p];
    for k in 0..p {
        let k1 = (k + 1) % p;
        let c = chord_partials(&jets[k], &jets[k1], prec);
        length += &c.h;
        grad[k] += &c.da;
        grad[k1] += &c.db;
        diag[k] += &c.daa;
        diag[k1] += &c.dbb;
        off[k] += &c.dab;
    }
    Functional {
        length,
        grad,
        diag,
        off,
    }
}

/// Public gradient of the length functional with respect to arclengths; at a
/// solved orbit it vanishes, and each component equals
/// sin(incoming angle) - sin(outgoing angle) at that bounce.
pub fn length_gradient(
    obstacles: &[ConvexObstacle],
    word: &Word,
    s: &[Float],
    prec: u32,
) -> Vec<Float> {
    evaluate(obstacles, word, s, prec).grad
}

/// Cyclic-tridiagonal Hessian of the length functional, returned as
/// (diagonal, cyclic off-diagonal): off[k] couples s_k with s_{k+1 mod p}.
pub fn length_hessian(
    obstacles: &[ConvexObstacle],
    word: &Word,
    s: &[Float],
    prec: u32,
) -> (Vec<Float>, Vec<Float>) {
    let f = evaluate(obstacles, word, s, prec);
    (f.diag, f.off)
}

/// Solves the cyclic-tridiagonal system H x = rhs. For p <= 3 every pair of
/// unknowns is coupled, so a small dense solve is used; for p >= 4 the
/// standard tridiagonal algorithm with a rank-one corner correction applies.
fn solve_cyclic(diag: &[Float], off: &[Float], rhs: &[Float], prec: u32) -> Option<Vec<Float>> {
    let p = diag.len();
    if p <= 3 {
        // assemble the dense matrix
        let mut m = vec![vec![Float::new(prec); p]; p];
        let mut b: Vec<Float> = rhs.to_vec();
        for k in 0..p {
            m[k][k] = diag[k].clone();
            let k1 = (k + 1) % p;
            m[k][k1] += &off[k];
            m[k1][k] += &off[k];
        }
        return dense_solve(&mut m, &mut b, prec);
    }
    // rank-one corner correction (Sherman-Morrison)
    let corner = off[p - 1].clone();
    let gamma = (-&diag[0]).complete(prec);
    let mut d = diag.to_vec();
    d[0] = (&diag[0] - &gamma).complete(prec);
    let cg = (&corner * &corner).complete(prec) / &gamma;
    d[p - 1] = (&diag[p - 1]).clone() - cg;
    let sub = &off[..p - 1];

    let y = thomas(&d, sub, rhs, prec)?;
    let mut u = vec![Float::new(prec); p];
    u[0] = gamma.clone();
    u[p - 1] = corner.clone();
    let z = thomas(&d, sub, &u, prec)?;
    // v = (1, 0, ..., 0, corner / gamma)
    let vg = (&corner / &gamma).complete(prec);
    let vy = (&y[0]).clone() + (&vg * &y[p - 1]).complete(prec);
    let vz = (&z[0]).clone() + (&vg * &z[p - 1]).complete(prec);
    let denom = vz + 1u32;
    if denom.is_zero() {
        return None;
    }
    let factor = vy / denom;
    let mut x = y;
    for k in 0..p {
        x[k] -= (&factor * &z[k]).complete(prec);
    }
    Some(x)
}

/// Thomas algorithm for a symmetric tridiagonal system (no pivoting; the
/// dispersing Hessians this sees are diagonally dominant).
fn thomas(diag: &[Float], sub: &[Float], rhs: &[Float], prec: u32) -> Option<Vec<Float>> {
    let n = diag.len();
    let mut c = vec![Float::new(prec); n];
    let mut d = vec![Float::new(prec); n];
    if diag[0].is_zero() {
        return None;
    }
    c[0] = (&sub[0] / &diag[0]).complete(prec);
    d[0] = (&rhs[0] / &diag[0]).complete(prec);
    for i in 1..n {
        let denom = (&diag[i]).clone() - (&sub[i - 1] * &c[i - 1]).complete(prec);
        if denom.is_zero() {
            return None;
        }
        if i < n - 1 {
            c[i] = (&sub[i] / &denom).complete(prec);
        }
        let num = (&rhs[i]).clone() - (&sub[i - 1] * &d[i - 1]).complete(prec);
        d[i] = num / denom;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        let t = (&c[i] * &x[i + 1]).complete(prec);
        x[i] -= t;
    }
    Some(x)
}

/// Gaussian elimination with partial pivoting for the p <= 3 dense case.
fn dense_solve(m: &mut [Vec<Float>], b: &mut [Float], prec: u32) -> Option<Vec<Float>> {
    let n = b.len();
    for col in 0..n {
        let mut piv = col;
        for r in (col + 1)..n {
            if m[r][col].clone().abs() > m[piv][col].clone().abs() {
                piv = r;
            }
        }
        if m[piv][col].is_zero() {
            return None;
        }
        m.swap(col, piv);
        b.swap(col, piv);
        for r in (col + 1)..n {
            let f = (&m[r][col] / &m[col][col]).complete(prec);
            for cc in col..n {
                let t = (&f * &m[col][cc]).complete(prec);
                m[r][cc] -= t;
            }
            let t = (&f * &b[col]).complete(prec);
            b[r] -= t;
        }
    }
    let mut x = vec![Float::new(prec); n];
    for r in (0..n).rev() {
        let mut acc = b[r].clone();
        for cc in (r + 1)..n {
            acc -= (&m[r][cc] * &x[cc]).complete(prec);
        }
        x[r] = acc / &m[r][r];
    }
    Some(x)
}

/// Word-aware initialization: each bounce starts at the boundary point of its
/// obstacle nearest to the midpoint of the two neighboring obstacle centers,
/// followed by a few sweeps of cyclic coordinate descent.
fn initialize(obstacles: &[ConvexObstacle], word: &Word) -> Vec<f64> {
    let prec = 64;
    let p = word.len();
    let syms = word.symbols();
    let mut s0 = Vec::with_capacity(p);
    for k in 0..p {
        let i = syms[k] as usize - 1;
        let prev = syms[(k + p - 1) % p] as usize - 1;
        let next = syms[(k + 1) % p] as usize - 1;
        let (ax, ay) = obstacles[prev].center();
        let (bx, by) = obstacles[next].center();
        let (cx, cy) = ((ax + bx) / 2.0, (ay + by) / 2.0);
        // coarse scan for the boundary point nearest the neighbor centroid
        let mut best = (f64::INFINITY, 0.0);
        for q in 0..256 {
            let t = q as f64 / 256.0 * 2.0 * std::f64::consts::PI;
            let (x, y) = obstacles[i].point_f64(t);
            let d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            if d2 < best.0 {
                best = (d2, t);
            }
        }
        let t = fl(prec, best.1);
        s0.push(obstacles[i].s_of_t(&t, prec).to_f64());
    }
    // cyclic coordinate descent: 1-D Newton on each bounce in turn
    let mut s: Vec<Float> = s0.iter().map(|&v| fl(prec, v)).collect();
    for _ in 0..5 {
        for k in 0..p {
            let f = evaluate(obstacles, word, &s, prec);
            if f.diag[k] > 0u32 {
                let step = (&f.grad[k] / &f.diag[k]).complete(prec);
                s[k] -= step;
            }
        }
    }
    s.iter().map(|v| v.to_f64()).collect()
}

/// Newton iteration at a fixed mantissa; mutates s in place. Returns the
/// final functional value when the gradient tolerance is met.
fn newton_at(
    obstacles: &[ConvexObstacle],
    word: &Word,
    s: &mut [Float],
    prec: u32,
    max_iter: usize,
    step_cap: f64,
) -> Result<Functional, Error> {
    let cap = fl(prec, step_cap);
    for _ in 0..max_iter {
        let f = evaluate(obstacles, word, s, prec);
        let mut gnorm = Float::new(prec);
        for g in &f.grad {
            let a = g.clone().abs();
            if a > gnorm {
                gnorm = a;
            }
        }
        let tol = eps(prec, 10) * &f.length;
        if gnorm <= tol {
            return Ok(f);
        }
        let neg_g: Vec<Float> = f.grad.iter().map(|g| (-g).complete(prec)).collect();
        let mut step = solve_cyclic(&f.diag, &f.off, &neg_g, prec).ok_or_else(|| {
            Error::NoConvergence {
                word: word.to_string(),
                residual: gnorm.to_f64(),
            }
        })?;
        // trust region: cap the per-bounce displacement
        for d in step.iter_mut() {
            if d.clone().abs() > cap {
                let sign = if *d < 0u32 { -1.0 } else { 1.0 };
                *d = cap.clone() * sign;
            }
        }
        for k in 0..s.len() {
            s[k] += &step[k];
        }
    }
    let f = evaluate(obstacles, word, s, prec);
    let mut gnorm = Float::new(prec);
    for g in &f.grad {
        let a = g.clone().abs();
        if a > gnorm {
            gnorm = a;
        }
    }
    let tol = eps(prec, 10) * &f.length;
    if gnorm <= tol {
        Ok(f)
    } else {
        Err(Error::NoConvergence {
            word: word.to_string(),
            residual: gnorm.to_f64(),
        })
    }
}

/// Builds phase points (with outgoing angles from the chord geometry) and
/// the reflection residual for a converged arclength vector.
fn finish(
    obstacles: &[ConvexObstacle],
    word: &Word,
    s: &[Float],
    f: &Functional,
    prec: u32,
    options: &SolveOptions,
) -> Result<PeriodicOrbit, Error> {
    let p = s.len();
    let syms = word.symbols();
    let mut frames = Vec::with_capacity(p);
    for k in 0..p {
        let k1 = (k + 1) % p;
        frames.push(chord_frame(
            obstacles,
            syms[k] as usize - 1,
            &s[k],
            syms[k1] as usize - 1,
            &s[k1],
            prec,
        ));
    }
    // a realizable bounce leaves and arrives on the outward side: both frame
    // angles stay strictly below pi/2. Pass-through saddle configurations of
    // the unconstrained functional are rejected here.
    let graze = crate::dynamics::grazing_threshold(prec);
    for (k, fr) in frames.iter().enumerate() {
        if fr.phi_minus.clone().cos() <= graze || fr.phi_plus.clone().cos() <= graze {
            return Err(Error::ItineraryMismatch {
                word: word.to_string(),
                bounce: k,
            });
        }
    }
    let mut points = Vec::with_capacity(p);
    let mut refl = Float::new(prec);
    for k in 0..p {
        let km = (k + p - 1) % p;
        // outgoing angle: chord-frame angle toward the next bounce;
        // reflection law demands it equal minus the incoming frame angle
        let phi = frames[k].phi_minus.clone();
        let r = ((&phi).clone() + &frames[km].phi_plus).abs();
        if r > refl {
            refl = r;
        }
        points.push(PhasePoint::new(syms[k] as usize - 1, s[k].clone(), phi));
    }
    let mut gnorm = Float::new(prec);
    for g in &f.grad {
        let a = g.clone().abs();
        if a > gnorm {
            gnorm = a;
        }
    }
    let orbit = PeriodicOrbit {
        word: word.clone(),
        points,
        length: f.length.clone(),
        gradient_norm: gnorm,
        reflection_residual: refl,
        precision: prec,
    };
    if options.check_itinerary {
        check_itinerary(obstacles, &orbit)?;
    }
    Ok(orbit)
}

/// Exact ray casting along the solved orbit: each bounce must reach the next
/// obstacle named by the word without occlusion.
fn check_itinerary(obstacles: &[ConvexObstacle], orbit: &PeriodicOrbit) -> Result<(), Error> {
    let p = orbit.points.len();
    for k in 0..p {
        let expect = orbit.points[(k + 1) % p].obstacle;
        match free_flight(obstacles, &orbit.points[k], orbit.precision) {
            Ok(Flight::Hit { point, .. }) if point.obstacle == expect => {}
            _ => {
                return Err(Error::ItineraryMismatch {
                    word: orbit.word.to_string(),
                    bounce: k,
                })
            }
        }
    }
    Ok(())
}

/// Finds the unique periodic orbit realizing an admissible word.
pub fn solve_periodic(
    obstacles: &[ConvexObstacle],
    word: &Word,
    prec: u32,
    options: &SolveOptions,
) -> Result<PeriodicOrbit, Error> {
    if !crate::symbolic::is_admissible(word.symbols()) {
        return Err(Error::Inadmissible(word.to_string()));
    }
    if prec > crate::real::MAX_PREC {
        return Err(Error::PrecisionUnavailable(prec, crate::real::MAX_PREC));
    }
    let step_cap = min_pairwise_gap(obstacles) / 4.0;
    let s0: Vec<f64> = match &options.initial_s {
        Some(v) => {
            assert_eq!(v.len(), word.len(), "initial_s length must match the word");
            v.clone()
        }
        None => initialize(obstacles, word),
    };
    let base = prec.min(64).max(crate::real::MIN_PREC);
    let mut cur = base;
    let mut s: Vec<Float> = s0.iter().map(|&v| fl(cur, v)).collect();
    let mut f = newton_at(obstacles, word, &mut s, cur, options.max_iter, step_cap)?;
    while cur < prec {
        cur = (cur * 2).min(prec);
        s = s.iter().map(|v| Float::with_val(cur, v)).collect();
        f = newton_at(obstacles, word, &mut s, cur, options.max_iter, step_cap)?;
    }
    finish(obstacles, word, &s, &f, prec, options)
}

/// Newton-polishes a converged orbit at a (typically higher) precision.
pub fn refine(
    obstacles: &[ConvexObstacle],
    orbit: &PeriodicOrbit,
    prec: u32,
    options: &SolveOptions,
) -> Result<PeriodicOrbit, Error> {
    if prec > crate::real::MAX_PREC {
        return Err(Error::PrecisionUnavailable(prec, crate::real::MAX_PREC));
    }
    let step_cap = min_pairwise_gap(obstacles) / 4.0;
    let mut s: Vec<Float> = orbit
        .points
        .iter()
        .map(|p| Float::with_val(prec, &p.s))
        .collect();
    let f = newton_at(obstacles, &orbit.word, &mut s, prec, options.max_iter, step_cap)?;
    finish(obstacles, &orbit.word, &s, &f, prec, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{equilateral_disc_table, ConvexObstacle, Shape};
    use crate::real::{fl, pi};
    use rand::{Rng, SeedableRng};

    fn disc(cx: f64, cy: f64, r: f64) -> ConvexObstacle {
        ConvexObstacle::new(Shape::Circle {
            center: [cx, cy],
            radius: r,
        })
        .unwrap()
    }

    fn disc_pair() -> Vec<ConvexObstacle> {
        vec![disc(0.0, 0.0, 1.0), disc(4.0, 0.0, 1.0)]
    }

    #[test]
    fn two_disc_period_two() {
        let prec = 128;
        let obs = disc_pair();
        let word = Word::new(vec![1, 2], 2).unwrap();
        let orbit = solve_periodic(&obs, &word, prec, &SolveOptions::default()).unwrap();
        assert!((orbit.length.clone() - 4u32).abs() < 1e-35);
        for p in &orbit.points {
            assert!(p.phi.clone().abs() < 1e-35);
        }
        let a = obs[0].eval_point(&orbit.points[0].s, prec).to_f64();
        let b = obs[1].eval_point(&orbit.points[1].s, prec).to_f64();
        assert!((a.0 - 1.0).abs() < 1e-12 && a.1.abs() < 1e-12);
        assert!((b.0 - 3.0).abs() < 1e-12 && b.1.abs() < 1e-12);
    }

    /// Independent oracle for the (1,2,3) orbit: cyclic golden-section
    /// coordinate descent over the three circle angles in plain f64.
    fn triangle_oracle(side: f64, radius: f64) -> f64 {
        let h = side * 3f64.sqrt() / 2.0;
        let centers = [(-side / 2.0, 0.0), (side / 2.0, 0.0), (0.0, h)];
        let pt = |i: usize, t: f64| -> (f64, f64) {
            (
                centers[i].0 + radius * t.cos(),
                centers[i].1 + radius * t.sin(),
            )
        };
        let total = |ts: &[f64; 3]| -> f64 {
            let mut l = 0.0;
            for k in 0..3 {
                let (ax, ay) = pt(k, ts[k]);
                let (bx, by) = pt((k + 1) % 3, ts[(k + 1) % 3]);
                l += ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt();
            }
            l
        };
        // start at the inward-facing points (toward the centroid)
        let cx = 0.0;
        let cy = h / 3.0;
        let mut ts = [0.0f64; 3];
        for (i, c) in centers.iter().enumerate() {
            ts[i] = (cy - c.1).atan2(cx - c.0);
        }
        for _ in 0..200 {
            for k in 0..3 {
                let (mut lo, mut hi) = (ts[k] - 0.5, ts[k] + 0.5);
                for _ in 0..80 {
                    let m1 = lo + 0.381_966_011_250_105 * (hi - lo);
                    let m2 = hi - 0.381_966_011_250_105 * (hi - lo);
                    let mut t1 = ts;
                    t1[k] = m1;
                    let mut t2 = ts;
                    t2[k] = m2;
                    if total(&t1) < total(&t2) {
                        hi = m2;
                    } else {
                        lo = m1;
                    }
                }
                ts[k] = (lo + hi) / 2.0;
            }
        }
        total(&ts)
    }

    #[test]
    fn equilateral_triangle_orbit_matches_oracle() {
        let prec = 128;
        let table = equilateral_disc_table(6.0, 1.0).unwrap();
        let word = Word::new(vec![1, 2, 3], 3).unwrap();
        let orbit = solve_periodic(table.obstacles(), &word, prec, &SolveOptions::default()).unwrap();
        let oracle = triangle_oracle(6.0, 1.0);
        assert!(
            (orbit.length.to_f64() - oracle).abs() < 1e-12,
            "length {} vs oracle {}",
            orbit.length.to_f64(),
            oracle
        );
        assert!(orbit.reflection_residual.to_f64() < 1e-30);
    }

    #[test]
    fn palindromic_word_has_perpendicular_centers() {
        let prec = 128;
        let table = equilateral_disc_table(6.0, 1.0).unwrap();
        let word = Word::new(vec![3, 2, 1, 2], 3).unwrap();
        let orbit = solve_periodic(table.obstacles(), &word, prec, &SolveOptions::default()).unwrap();
        // bounces carrying the symbols 3 (index 0) and the central 1 (index 2)
        // are the symmetry points: the orbit hits them perpendicularly
        assert!(orbit.points[0].phi.clone().abs() < 1e-30);
        assert!(orbit.points[2].phi.clone().abs() < 1e-30);
        // the two "2" bounces mirror each other
        assert!(
            ((&orbit.points[1].phi).clone() + &orbit.points[3].phi).abs() < 1e-30
        );
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let prec = 192;
        let table = equilateral_disc_table(6.0, 1.0).unwrap();
        let word = Word::new(vec![1, 2, 3], 3).unwrap();
        let s: Vec<Float> = vec![fl(prec, 0.3), fl(prec, 2.9), fl(prec, 4.9)];
        let grad = length_gradient(table.obstacles(), &word, &s, prec);
        let (diag, off) = length_hessian(table.obstacles(), &word, &s, prec);
        let total = |sv: &[Float]| -> Float {
            evaluate(table.obstacles(), &word, sv, prec).length
        };
        let h = fl(prec, 1e-25);
        for k in 0..3 {
            let mut sp = s.clone();
            sp[k] += &h;
            let mut sm = s.clone();
            sm[k] -= &h;
            let fd = (total(&sp) - total(&sm)) / (fl(prec, 2.0) * &h);
            assert!(
                ((&grad[k]).clone() - &fd).abs() < 1e-20,
                "gradient component {k}"
            );
            // diagonal Hessian entry
            let gp = length_gradient(table.obstacles(), &word, &sp, prec);
            let gm = length_gradient(table.obstacles(), &word, &sm, prec);
            let fdd = ((&gp[k]).clone() - &gm[k]) / (fl(prec, 2.0) * &h);
            assert!(((&diag[k]).clone() - &fdd).abs() < 1e-20, "diag {k}");
            let k1 = (k + 1) % 3;
            let fdo = ((&gp[k1]).clone() - &gm[k1]) / (fl(prec, 2.0) * &h);
            assert!(((&off[k]).clone() - &fdo).abs() < 1e-20, "off {k}");
        }
    }

    #[test]
    fn gradient_is_sine_difference_at_bounces() {
        // at any configuration, each gradient component equals
        // sin(incoming frame angle at the bounce) + sin(outgoing frame angle)
        // with the chord-frame sign conventions: d h(a,b)/db = -sin(phi+),
        // d h(b,c)/db = -sin(phi-)
        let prec = 128;
        let table = equilateral_disc_table(6.0, 1.0).unwrap();
        let word = Word::new(vec![1, 2, 3], 3).unwrap();
        let s: Vec<Float> = vec![fl(prec, 0.4), fl(prec, 3.0), fl(prec, 5.1)];
        let grad = length_gradient(table.obstacles(), &word, &s, prec);
        for k in 0..3 {
            let km = (k + 2) % 3;
            let k1 = (k + 1) % 3;
            let fin = chord_frame(table.obstacles(), km, &s[km], k, &s[k], prec);
            let fout = chord_frame(table.obstacles(), k, &s[k], k1, &s[k1], prec);
            let expect = -(fin.phi_plus.clone().sin() + fout.phi_minus.clone().sin());
            assert!(
                ((&grad[k]).clone() - &expect).abs() < 1e-30,
                "bounce {k}: {} vs {}",
                grad[k].to_f64(),
                expect.to_f64()
            );
        }
    }

    #[test]
    fn hessian_positive_definite_at_two_disc_orbit() {
        let prec = 128;
        let obs = disc_pair();
        let word = Word::new(vec![1, 2], 2).unwrap();
        let orbit = solve_periodic(&obs, &word, prec, &SolveOptions::default()).unwrap();
        let s: Vec<Float> = orbit.points.iter().map(|p| p.s.clone()).collect();
        let (diag, off) = length_hessian(&obs, &word, &s, prec);
        // 2x2 case: H = [[d0, e], [e, d1]] with e = off0 + off1
        let e = ((&off[0]).clone() + &off[1]).to_f64();
        let (d0, d1) = (diag[0].to_f64(), diag[1].to_f64());
        let tr = d0 + d1;
        let det = d0 * d1 - e * e;
        assert!(tr > 0.0 && det > 0.0, "tr {tr}, det {det}");
    }

    #[test]
    fn uniqueness_from_random_initializations() {
        let prec = 64;
        let table = equilateral_disc_table(6.0, 1.0).unwrap();
        let word = Word::new(vec![1, 2, 1, 3], 3).unwrap();
        let reference =
            solve_periodic(table.obstacles(), &word, prec, &SolveOptions::default()).unwrap();
        let base: Vec<f64> = reference.points.iter().map(|p| p.s.to_f64()).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut agreed = 0;
        for _ in 0..32 {
            // random admissible starts: scatter around the chart of the word
            let init: Vec<f64> = base
                .iter()
                .map(|s| s + rng.gen_range(-1.0..1.0))
                .collect();
            let options = SolveOptions {
                initial_s: Some(init),
                check_itinerary: true,
                ..SolveOptions::default()
            };
            if let Ok(orbit) = solve_periodic(table.obstacles(), &word, prec, &options) {
                let close = orbit
                    .points
                    .iter()
                    .zip(reference.points.iter())
                    .all(|(a, b)| {
                        let pa = table.obstacle(a.obstacle).eval_point(&a.s, prec).to_f64();
                        let pb = table.obstacle(b.obstacle).eval_point(&b.s, prec).to_f64();
                        (pa.0 - pb.0).hypot(pa.1 - pb.1) < 1e-8
                    });
                assert!(close, "converged to a different stationary point");
                agreed += 1;
            }
        }
        // starts that wander outside the admissible chart are rejected by the
        // realizability check, but every convergent run must agree
        assert!(agreed >= 24, "only {agreed}/32 runs converged");
    }

    #[test]
    fn rotation_covariance_and_reversal() {
        let prec = 128;
        let table = equilateral_disc_table(6.0, 1.0).unwrap();
        let word = Word::new(vec![1, 2, 1, 3], 3).unwrap();
        let orbit = solve_periodic(table.obstacles(), &word, prec, &SolveOptions::default()).unwrap();

        let rotated = word.rotate(1);
        let orbit_rot =
            solve_periodic(table.obstacles(), &rotated, prec, &SolveOptions::default()).unwrap();
        assert!(((&orbit.length).clone() - &orbit_rot.length).abs() < 1e-35);
        for k in 0..4 {
            let a = &orbit.points[(k + 1) % 4];
            let b = &orbit_rot.points[k];
            assert_eq!(a.obstacle, b.obstacle);
            assert!(((&a.s).clone() - &b.s).abs() < 1e-30);
        }

        let rev = word.transpose();
        let orbit_rev =
            solve_periodic(table.obstacles(), &rev, prec, &SolveOptions::default()).unwrap();
        assert!(((&orbit.length).clone() - &orbit_rev.length).abs() < 1e-35);
        // the reversed orbit visits the same points with negated angles
        for a in &orbit_rev.points {
            let found = orbit.points.iter().any(|b| {
                a.obstacle == b.obstacle
                    && ((&a.s).clone() - &b.s).abs() < 1e-25
                    && ((&a.phi).clone() + &b.phi).abs() < 1e-25
            });
            assert!(found, "reversed bounce not found in the original orbit");
        }
    }

    #[test]
    fn refine_drops_residual_and_is_idempotent() {
        let table = equilateral_disc_table(6.0, 1.0).unwrap();
        let word = Word::new(vec![3, 2, 1, 2], 3).unwrap();
        let coarse =
            solve_periodic(table.obstacles(), &word, 64, &SolveOptions::default()).unwrap();
        let fine = refine(table.obstacles(), &coarse, 256, &SolveOptions::default()).unwrap();
        assert!(fine.gradient_norm.to_f64() < 1e-70);
        assert!(fine.reflection_residual.to_f64() < 1e-70);
        let again = refine(table.obstacles(), &fine, 256, &SolveOptions::default()).unwrap();
        for (a, b) in fine.points.iter().zip(again.points.iter()) {
            assert!(((&a.s).clone() - &b.s).abs() < 1e-70);
        }
        // refining the symmetric two-disc orbit leaves its points fixed
        let obs = disc_pair();
        let w2 = Word::new(vec![1, 2], 2).unwrap();
        let o2 = solve_periodic(&obs, &w2, 128, &SolveOptions::default()).unwrap();
        let o2r = refine(&obs, &o2, 128, &SolveOptions::default()).unwrap();
        for (a, b) in o2.points.iter().zip(o2r.points.iter()) {
            assert!(((&a.s).clone() - &b.s).abs() < 1e-35);
        }
    }

    #[test]
    fn longer_words_converge() {
        let prec = 128;
        let table = equilateral_disc_table(6.0, 1.0).unwrap();
        // h_n-style words grow linearly; check a 42-bounce solve stays exact
        let word = crate::symbolic::build_hn(20);
        let orbit = solve_periodic(table.obstacles(), &word, prec, &SolveOptions::default()).unwrap();
        assert_eq!(orbit.period(), 42);
        assert!(orbit.gradient_norm.to_f64() < 1e-35);
        assert!(orbit.reflection_residual.to_f64() < 1e-30);
    }

    #[test]
    fn orbit_json_round_trips_key_fields() {
        let prec = 96;
        let obs = disc_pair();
        let word = Word::new(vec![1, 2], 2).unwrap();
        let orbit = solve_periodic(&obs, &word, prec, &SolveOptions::default()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&orbit.to_json()).unwrap();
        assert_eq!(v["word"], "12");
        assert_eq!(v["precision_bits"], 96);
        assert_eq!(v["bounces"].as_array().unwrap().len(), 2);
        let len: f64 = v["length"].as_str().unwrap().parse::<f64>().unwrap_or_else(|_| {
            // decimal strings use the 0.xxxEyy form; parse via rug
            crate::real::parse_decimal(64, v["length"].as_str().unwrap())
                .unwrap()
                .to_f64()
        });
        assert!((len - 4.0).abs() < 1e-10);
        let _ = pi(64);
    }
}
