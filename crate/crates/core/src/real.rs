//! Multiprecision scalars, small vectors/matrices, and Gauss-Legendre quadrature.
//!
//! Everything downstream is parametrized by a mantissa size in bits; we thread
//! a plain `u32` through instead of wrapping `rug::Float` in a generic layer.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rug::float::Round;
use rug::ops::CompleteRound;
use rug::Float;

/// Minimum supported mantissa (an f64 has 53 bits).
pub const MIN_PREC: u32 = 53;
/// Maximum supported mantissa.
pub const MAX_PREC: u32 = 4096;

pub fn fl(prec: u32, v: f64) -> Float {
    Float::with_val(prec, v)
}

pub fn pi(prec: u32) -> Float {
    Float::with_val(prec, rug::float::Constant::Pi)
}

/// Parse a decimal string at the given precision.
pub fn parse_decimal(prec: u32, s: &str) -> Option<Float> {
    Float::parse(s).ok().map(|p| Float::with_val(prec, p))
}

/// Render with exactly enough digits to round-trip at the value's precision.
pub fn to_decimal(x: &Float) -> String {
    // mpfr_get_str with 0 requested digits returns a minimal round-trippable string.
    let (sign, digits, exp) = x.to_sign_string_exp(10, None);
    if x.is_zero() {
        return "0".to_string();
    }
    let s = if sign { "-" } else { "" };
    format!("{}0.{}e{}", s, digits, exp.unwrap_or(0))
}

/// 2^-(prec-guard) -- the working tolerance at a given precision.
pub fn eps(prec: u32, guard_bits: u32) -> Float {
    Float::with_val(prec, Float::i_exp(1, -((prec - guard_bits.min(prec - 1)) as i32)))
}

// ---------------------------------------------------------------------------
// planar vectors
// ---------------------------------------------------------------------------

/// A point or vector in the plane at working precision.
#[derive(Clone, Debug)]
pub struct P2 {
    pub x: Float,
    pub y: Float,
}

impl P2 {
    pub fn new(x: Float, y: Float) -> Self {
        P2 { x, y }
    }

    pub fn from_f64(prec: u32, x: f64, y: f64) -> Self {
        P2::new(fl(prec, x), fl(prec, y))
    }

    pub fn prec(&self) -> u32 {
        self.x.prec()
    }

    pub fn add(&self, o: &P2) -> P2 {
        let p = self.prec();
        P2::new((&self.x + &o.x).complete(p), (&self.y + &o.y).complete(p))
    }

    pub fn sub(&self, o: &P2) -> P2 {
        let p = self.prec();
        P2::new((&self.x - &o.x).complete(p), (&self.y - &o.y).complete(p))
    }

    pub fn scale(&self, c: &Float) -> P2 {
        let p = self.prec();
        P2::new((&self.x * c).complete(p), (&self.y * c).complete(p))
    }

    pub fn dot(&self, o: &P2) -> Float {
        let p = self.prec();
        (&self.x * &o.x).complete(p) + (&self.y * &o.y).complete(p)
    }

    pub fn cross(&self, o: &P2) -> Float {
        let p = self.prec();
        (&self.x * &o.y).complete(p) - (&self.y * &o.x).complete(p)
    }

    pub fn norm(&self) -> Float {
        self.dot(self).sqrt()
    }

    pub fn normalize(&self) -> P2 {
        let n = self.norm();
        let p = self.prec();
        P2::new((&self.x / &n).complete(p), (&self.y / &n).complete(p))
    }

    /// Counterclockwise rotation by `angle`.
    pub fn rotate(&self, angle: &Float) -> P2 {
        let p = self.prec();
        let (sin, cos) = angle.clone().sin_cos(Float::new(p));
        P2::new(
            (&self.x * &cos).complete(p) - (&self.y * &sin).complete(p),
            (&self.x * &sin).complete(p) + (&self.y * &cos).complete(p),
        )
    }

    /// Rotation by -90 degrees: (x, y) -> (y, -x).
    pub fn rot_cw(&self) -> P2 {
        P2::new(self.y.clone(), (-&self.x).complete(self.prec()))
    }

    pub fn to_f64(&self) -> (f64, f64) {
        (self.x.to_f64(), self.y.to_f64())
    }
}

// ---------------------------------------------------------------------------
// 2x2 matrices
// ---------------------------------------------------------------------------

/// Dense 2x2 matrix at working precision; rows are (a b; c d).
#[derive(Clone, Debug)]
pub struct Mat2 {
    pub a: Float,
    pub b: Float,
    pub c: Float,
    pub d: Float,
}

impl Mat2 {
    pub fn new(a: Float, b: Float, c: Float, d: Float) -> Self {
        Mat2 { a, b, c, d }
    }

    pub fn prec(&self) -> u32 {
        self.a.prec()
    }

    pub fn identity(prec: u32) -> Self {
        Mat2::new(fl(prec, 1.0), fl(prec, 0.0), fl(prec, 0.0), fl(prec, 1.0))
    }

    pub fn mul(&self, o: &Mat2) -> Mat2 {
        let p = self.prec();
        Mat2::new(
            (&self.a * &o.a).complete(p) + (&self.b * &o.c).complete(p),
            (&self.a * &o.b).complete(p) + (&self.b * &o.d).complete(p),
            (&self.c * &o.a).complete(p) + (&self.d * &o.c).complete(p),
            (&self.c * &o.b).complete(p) + (&self.d * &o.d).complete(p),
        )
    }

    pub fn mul_vec(&self, v: &P2) -> P2 {
        let p = self.prec();
        P2::new(
            (&self.a * &v.x).complete(p) + (&self.b * &v.y).complete(p),
            (&self.c * &v.x).complete(p) + (&self.d * &v.y).complete(p),
        )
    }

    pub fn neg(&self) -> Mat2 {
        let p = self.prec();
        Mat2::new(
            (-&self.a).complete(p),
            (-&self.b).complete(p),
            (-&self.c).complete(p),
            (-&self.d).complete(p),
        )
    }

    pub fn scale(&self, c: &Float) -> Mat2 {
        let p = self.prec();
        Mat2::new(
            (&self.a * c).complete(p),
            (&self.b * c).complete(p),
            (&self.c * c).complete(p),
            (&self.d * c).complete(p),
        )
    }

    pub fn trace(&self) -> Float {
        (&self.a + &self.d).complete(self.prec())
    }

    pub fn det(&self) -> Float {
        let p = self.prec();
        (&self.a * &self.d).complete(p) - (&self.b * &self.c).complete(p)
    }
}

// ---------------------------------------------------------------------------
// Gauss-Legendre quadrature at arbitrary precision
// ---------------------------------------------------------------------------

type NodeCache = Mutex<HashMap<(usize, u32), Arc<(Vec<Float>, Vec<Float>)>>>;

fn node_cache() -> &'static NodeCache {
    static CACHE: OnceLock<NodeCache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1],
/// computed by Newton refinement of the Chebyshev initial guesses.
pub fn gauss_legendre(n: usize, prec: u32) -> Arc<(Vec<Float>, Vec<Float>)> {
    if let Some(v) = node_cache().lock().unwrap().get(&(n, prec)) {
        return v.clone();
    }
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let _ = pi;
    let tol = eps(prec, 8);
    for i in 1..=n {
        let guess = ((i as f64 - 0.25) / (n as f64 + 0.5) * std::f64::consts::PI).cos();
        let mut x = fl(prec, guess);
        let mut dp = Float::new(prec);
        for _ in 0..200 {
            // Legendre recurrence for P_n(x) and P_n'(x).
            let mut p0 = fl(prec, 1.0);
            let mut p1 = x.clone();
            for k in 2..=n {
                let a = (&x * &p1).complete(prec) * ((2 * k - 1) as f64)
                    - p0.clone() * ((k - 1) as f64);
                p0 = p1;
                p1 = a / (k as f64);
            }
            // P_n'(x) = n (x P_n - P_{n-1}) / (x^2 - 1)
            let num = ((&x * &p1).complete(prec) - &p0) * (n as f64);
            let den = (&x * &x).complete(prec) - 1u32;
            dp = num / den;
            let step = (&p1 / &dp).complete(prec);
            x -= &step;
            if step.clone().abs() < tol {
                break;
            }
        }
        let one_minus = 1u32 - (&x * &x).complete(prec);
        let w = fl(prec, 2.0) / (one_minus * (&dp * &dp).complete(prec));
        nodes.push(x);
        weights.push(w);
    }
    let arc = Arc::new((nodes, weights));
    node_cache()
        .lock()
        .unwrap()
        .insert((n, prec), arc.clone());
    arc
}

fn gl_panel<F: Fn(&Float) -> Float>(f: &F, a: &Float, b: &Float, prec: u32, n: usize) -> Float {
    let gl = gauss_legendre(n, prec);
    let half = ((b - a).complete(prec)) / 2u32;
    let mid = ((a + b).complete(prec)) / 2u32;
    let mut sum = Float::new(prec);
    for (x, w) in gl.0.iter().zip(gl.1.iter()) {
        let t = (&half * x).complete(prec) + &mid;
        sum += w * f(&t);
    }
    sum * &half
}

/// Adaptive Gauss-Legendre integral of `f` over [a, b] to the working tolerance.
pub fn integrate<F: Fn(&Float) -> Float>(f: &F, a: &Float, b: &Float, prec: u32) -> Float {
    fn recurse<F: Fn(&Float) -> Float>(
        f: &F,
        a: &Float,
        b: &Float,
        whole: Float,
        prec: u32,
        tol: &Float,
        depth: u32,
    ) -> Float {
        let mid = ((a + b).complete(prec)) / 2u32;
        let left = gl_panel(f, a, &mid, prec, 32);
        let right = gl_panel(f, &mid, b, prec, 32);
        let two = (&left + &right).complete(prec);
        let err = ((&two - &whole).complete(prec)).abs();
        let scale = two.clone().abs() + 1u32;
        if depth >= 48 || err <= tol * scale {
            return two;
        }
        let l = recurse(f, a, &mid, left, prec, tol, depth + 1);
        let r = recurse(f, &mid, b, right, prec, tol, depth + 1);
        l + r
    }
    if a == b {
        return Float::new(prec);
    }
    let tol = eps(prec, 6);
    let whole = gl_panel(f, a, b, prec, 32);
    recurse(f, a, b, whole, prec, &tol, 0)
}

/// Round a float to a lower precision (used when serving cached high-precision data).
pub fn round_to(x: &Float, prec: u32) -> Float {
    let mut y = x.clone();
    y.set_prec_round(prec, Round::Nearest);
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl_integrates_polynomial_exactly() {
        let prec = 128;
        let f = |x: &Float| {
            let x2 = (x * x).complete(prec);
            x2 * x
        };
        let v = integrate(&f, &fl(prec, 0.0), &fl(prec, 2.0), prec);
        let err = (v - fl(prec, 4.0)).abs();
        assert!(err < eps(prec, 16), "err = {err}");
    }

    #[test]
    fn integral_of_cos_matches_sin() {
        let prec = 256;
        let f = |x: &Float| x.clone().cos();
        let one = fl(prec, 1.0);
        let v = integrate(&f, &fl(prec, 0.0), &one, prec);
        let err = (v - one.sin()).abs();
        assert!(err < eps(prec, 16), "err = {err}");
    }

    #[test]
    fn decimal_round_trip_is_exact() {
        let prec = 192;
        let x = fl(prec, 1.0) / fl(prec, 3.0) * pi(prec);
        let s = to_decimal(&x);
        let y = parse_decimal(prec, &s).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn rotation_is_orthogonal() {
        let prec = 128;
        let v = P2::from_f64(prec, 0.3, -1.7);
        let r = v.rotate(&fl(prec, 0.9));
        let err = (v.norm() - r.norm()).abs();
        assert!(err < eps(prec, 16));
    }
}
