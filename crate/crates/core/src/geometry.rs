//! Strictly convex obstacles and billiard tables.
//!
//! Obstacles come from analytic shape families (circle, ellipse, radial
//! Fourier perturbation of a circle) so that first and second derivatives of
//! the boundary are exact at any working precision. Boundaries are
//! parametrized counterclockwise by the native angle t in [0, 2pi); the
//! outward normal (pointing into the billiard domain) is gamma' rotated by
//! -90 degrees.

use rug::ops::CompleteRound;
use rug::Float;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::real::{eps, fl, integrate, pi, P2};

/// Analytic shape families; parameters are exact binary64 values.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    Circle {
        center: [f64; 2],
        radius: f64,
    },
    Ellipse {
        center: [f64; 2],
        semi_axes: [f64; 2],
        rotation: f64,
    },
    Fourier {
        center: [f64; 2],
        base_radius: f64,
        #[serde(default)]
        cos: Vec<f64>,
        #[serde(default)]
        sin: Vec<f64>,
    },
}

/// A strictly convex closed boundary curve.
#[derive(Clone, Debug)]
pub struct ConvexObstacle {
    shape: Shape,
    /// Coarse f64 arclength table (t_i, s_i) used to seed inversions.
    coarse: Vec<(f64, f64)>,
    coarse_total: f64,
    min_curvature: f64,
}

const COARSE_SAMPLES: usize = 512;
const CONVEXITY_SAMPLES: usize = 4096;

impl ConvexObstacle {
    pub fn new(shape: Shape) -> Result<Self, Error> {
        match &shape {
            Shape::Circle { radius, .. } => {
                if *radius <= 0.0 {
                    return Err(Error::NonConvex("circle radius must be positive".into()));
                }
            }
            Shape::Ellipse { semi_axes, .. } => {
                let [a, b] = *semi_axes;
                if !(a >= b && b > 0.0) {
                    return Err(Error::NonConvex("ellipse needs a >= b > 0".into()));
                }
            }
            Shape::Fourier { base_radius, .. } => {
                if *base_radius <= 0.0 {
                    return Err(Error::NonConvex("base radius must be positive".into()));
                }
            }
        }
        let mut ob = ConvexObstacle {
            shape,
            coarse: Vec::new(),
            coarse_total: 0.0,
            min_curvature: 0.0,
        };
        ob.min_curvature = ob.validate_convexity()?;
        ob.build_coarse_table();
        Ok(ob)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn min_curvature(&self) -> f64 {
        self.min_curvature
    }

    /// Curvature is sampled on a dense grid, then each local minimum is
    /// refined by golden-section search before the positivity check.
    fn validate_convexity(&self) -> Result<f64, Error> {
        let prec = 64;
        let n = CONVEXITY_SAMPLES;
        let k: Vec<f64> = (0..n)
            .map(|i| {
                let t = fl(prec, i as f64 / n as f64 * 2.0 * std::f64::consts::PI);
                self.curvature_t(&t, prec).to_f64()
            })
            .collect();
        let mut min_k = f64::INFINITY;
        for i in 0..n {
            let prev = k[(i + n - 1) % n];
            let next = k[(i + 1) % n];
            if k[i] <= prev && k[i] <= next {
                let step = 2.0 * std::f64::consts::PI / n as f64;
                let t0 = i as f64 * step;
                let refined = golden_min(
                    |t| {
                        let tf = fl(prec, t);
                        self.curvature_t(&tf, prec).to_f64()
                    },
                    t0 - step,
                    t0 + step,
                );
                min_k = min_k.min(refined);
            }
            min_k = min_k.min(k[i]);
        }
        if min_k <= 0.0 {
            return Err(Error::NonConvex(format!(
                "curvature reaches {min_k:.3e}; boundary is not strictly convex"
            )));
        }
        Ok(min_k)
    }

    fn build_coarse_table(&mut self) {
        let prec = 64;
        let n = COARSE_SAMPLES;
        let mut table = Vec::with_capacity(n + 1);
        let mut acc = 0.0f64;
        table.push((0.0, 0.0));
        let step = 2.0 * std::f64::consts::PI / n as f64;
        for i in 0..n {
            let a = fl(prec, i as f64 * step);
            let b = fl(prec, (i + 1) as f64 * step);
            let seg = integrate(&|t| self.d1(t, prec).norm(), &a, &b, prec).to_f64();
            acc += seg;
            table.push(((i + 1) as f64 * step, acc));
        }
        self.coarse = table;
        self.coarse_total = acc;
    }

    pub fn center(&self) -> (f64, f64) {
        match &self.shape {
            Shape::Circle { center, .. }
            | Shape::Ellipse { center, .. }
            | Shape::Fourier { center, .. } => (center[0], center[1]),
        }
    }

    /// Boundary point at native parameter t.
    pub fn point(&self, t: &Float, prec: u32) -> P2 {
        let (sin, cos) = t.clone().sin_cos(Float::new(prec));
        match &self.shape {
            Shape::Circle { center, radius } => P2::new(
                fl(prec, center[0]) + fl(prec, *radius) * &cos,
                fl(prec, center[1]) + fl(prec, *radius) * &sin,
            ),
            Shape::Ellipse {
                center,
                semi_axes,
                rotation,
            } => {
                let local = P2::new(fl(prec, semi_axes[0]) * &cos, fl(prec, semi_axes[1]) * &sin);
                let rotated = local.rotate(&fl(prec, *rotation));
                P2::new(
                    fl(prec, center[0]) + rotated.x,
                    fl(prec, center[1]) + rotated.y,
                )
            }
            Shape::Fourier { center, .. } => {
                let r = self.radial(t, 0, prec);
                P2::new(
                    fl(prec, center[0]) + (&r * &cos).complete(prec),
                    fl(prec, center[1]) + (&r * &sin).complete(prec),
                )
            }
        }
    }

    /// First derivative of the boundary with respect to t.
    pub fn d1(&self, t: &Float, prec: u32) -> P2 {
        let (sin, cos) = t.clone().sin_cos(Float::new(prec));
        match &self.shape {
            Shape::Circle { radius, .. } => P2::new(
                fl(prec, -*radius) * &sin,
                fl(prec, *radius) * &cos,
            ),
            Shape::Ellipse {
                semi_axes, rotation, ..
            } => {
                let local = P2::new(fl(prec, -semi_axes[0]) * &sin, fl(prec, semi_axes[1]) * &cos);
                local.rotate(&fl(prec, *rotation))
            }
            Shape::Fourier { .. } => {
                let r = self.radial(t, 0, prec);
                let dr = self.radial(t, 1, prec);
                P2::new(
                    (&dr * &cos).complete(prec) - (&r * &sin).complete(prec),
                    (&dr * &sin).complete(prec) + (&r * &cos).complete(prec),
                )
            }
        }
    }

    /// Second derivative of the boundary with respect to t.
    pub fn d2(&self, t: &Float, prec: u32) -> P2 {
        let (sin, cos) = t.clone().sin_cos(Float::new(prec));
        match &self.shape {
            Shape::Circle { radius, .. } => P2::new(
                fl(prec, -*radius) * &cos,
                fl(prec, -*radius) * &sin,
            ),
            Shape::Ellipse {
                semi_axes, rotation, ..
            } => {
                let local = P2::new(fl(prec, -semi_axes[0]) * &cos, fl(prec, -semi_axes[1]) * &sin);
                local.rotate(&fl(prec, *rotation))
            }
            Shape::Fourier { .. } => {
                let r = self.radial(t, 0, prec);
                let dr = self.radial(t, 1, prec);
                let ddr = self.radial(t, 2, prec);
                let rad = ddr - &r;
                P2::new(
                    (&rad * &cos).complete(prec) - fl(prec, 2.0) * (&dr * &sin).complete(prec),
                    (&rad * &sin).complete(prec) + fl(prec, 2.0) * (&dr * &cos).complete(prec),
                )
            }
        }
    }

    /// Radial function r(t) of a Fourier shape and its derivatives of order 0..=2.
    fn radial(&self, t: &Float, order: u32, prec: u32) -> Float {
        let (r0, cos_c, sin_c) = match &self.shape {
            Shape::Fourier {
                base_radius,
                cos,
                sin,
                ..
            } => (*base_radius, cos, sin),
            _ => unreachable!("radial() is only called for Fourier shapes"),
        };
        let mut acc = if order == 0 {
            fl(prec, r0)
        } else {
            Float::new(prec)
        };
        let n = cos_c.len().max(sin_c.len());
        for k in 1..=n {
            let a = cos_c.get(k - 1).copied().unwrap_or(0.0);
            let b = sin_c.get(k - 1).copied().unwrap_or(0.0);
            let kt = t.clone() * (k as f64);
            let (skt, ckt) = kt.sin_cos(Float::new(prec));
            let kf = k as f64;
            let term = match order {
                0 => fl(prec, a) * &ckt + fl(prec, b) * &skt,
                1 => fl(prec, -a * kf) * &skt + fl(prec, b * kf) * &ckt,
                2 => fl(prec, -a * kf * kf) * &ckt + fl(prec, -b * kf * kf) * &skt,
                _ => unreachable!(),
            };
            acc += term;
        }
        acc
    }

    /// Curvature at native parameter t: cross(g', g'') / |g'|^3.
    pub fn curvature_t(&self, t: &Float, prec: u32) -> Float {
        let d1 = self.d1(t, prec);
        let d2 = self.d2(t, prec);
        let num = d1.cross(&d2);
        let n = d1.norm();
        let n3 = (&n * &n).complete(prec) * &n;
        num / n3
    }

    /// Curvature at arclength s.
    pub fn curvature(&self, s: &Float, prec: u32) -> Float {
        let t = self.t_of_s(s, prec);
        self.curvature_t(&t, prec)
    }

    /// Total boundary length at working precision.
    pub fn total_length(&self, prec: u32) -> Float {
        match &self.shape {
            Shape::Circle { radius, .. } => fl(prec, 2.0) * pi(prec) * fl(prec, *radius),
            _ => {
                let two_pi = fl(prec, 2.0) * pi(prec);
                integrate(
                    &|t| self.d1(t, prec).norm(),
                    &Float::new(prec),
                    &two_pi,
                    prec,
                )
            }
        }
    }

    /// Arclength from the parameter origin to t (t not reduced).
    pub fn s_of_t(&self, t: &Float, prec: u32) -> Float {
        match &self.shape {
            Shape::Circle { radius, .. } => t.clone() * fl(prec, *radius),
            _ => {
                let two_pi = fl(prec, 2.0) * pi(prec);
                let wraps = (t / &two_pi).complete(prec).floor();
                let t_red = t - (&wraps * &two_pi).complete(prec);
                let base = &wraps * self.total_length(prec);
                base + integrate(
                    &|u| self.d1(u, prec).norm(),
                    &Float::new(prec),
                    &t_red,
                    prec,
                )
            }
        }
    }

    /// Inverse arclength map, by monotone Newton seeded from the coarse table.
    pub fn t_of_s(&self, s: &Float, prec: u32) -> Float {
        if prec > crate::real::MAX_PREC {
            // guarded by RunConfig, but keep the invariant local too
            panic!("precision above configured maximum");
        }
        match &self.shape {
            Shape::Circle { radius, .. } => s.clone() / fl(prec, *radius),
            _ => {
                let total = self.total_length(prec);
                let wraps = (s / &total).complete(prec).floor();
                let s_red = s - (&wraps * &total).complete(prec);
                let two_pi = fl(prec, 2.0) * pi(prec);

                // seed from the coarse f64 table
                let sf = s_red.to_f64() / total.to_f64() * self.coarse_total;
                let idx = self
                    .coarse
                    .partition_point(|&(_, si)| si < sf)
                    .min(self.coarse.len() - 1);
                let (t_hi, s_hi) = self.coarse[idx];
                let (t_lo, s_lo) = if idx > 0 {
                    self.coarse[idx - 1]
                } else {
                    (0.0, 0.0)
                };
                let frac = if s_hi > s_lo {
                    (sf - s_lo) / (s_hi - s_lo)
                } else {
                    0.0
                };
                let mut t = fl(prec, t_lo + frac * (t_hi - t_lo));

                let tol = eps(prec, 10) * (&two_pi).clone();
                for _ in 0..100 {
                    let f = self.s_of_t(&t, prec) - &s_red;
                    let speed = self.d1(&t, prec).norm();
                    let step = f / speed;
                    t -= &step;
                    if step.abs() < tol {
                        break;
                    }
                }
                t + (&wraps * &two_pi).complete(prec)
            }
        }
    }

    /// Boundary point at arclength s (s reduced mod total length).
    pub fn eval_point(&self, s: &Float, prec: u32) -> P2 {
        let t = self.t_of_s(s, prec);
        self.point(&t, prec)
    }

    /// Outward unit normal (pointing into the billiard domain) at t.
    pub fn normal(&self, t: &Float, prec: u32) -> P2 {
        self.d1(t, prec).normalize().rot_cw()
    }

    /// Boundary point at native parameter t in plain f64 (used for cheap
    /// bracketing before multiprecision refinement).
    pub fn point_f64(&self, t: f64) -> (f64, f64) {
        match &self.shape {
            Shape::Circle { center, radius } => {
                (center[0] + radius * t.cos(), center[1] + radius * t.sin())
            }
            Shape::Ellipse {
                center,
                semi_axes,
                rotation,
            } => {
                let (x, y) = (semi_axes[0] * t.cos(), semi_axes[1] * t.sin());
                let (sr, cr) = rotation.sin_cos();
                (center[0] + cr * x - sr * y, center[1] + sr * x + cr * y)
            }
            Shape::Fourier {
                center,
                base_radius,
                cos,
                sin,
            } => {
                let mut r = *base_radius;
                for k in 1..=cos.len().max(sin.len()) {
                    let a = cos.get(k - 1).copied().unwrap_or(0.0);
                    let b = sin.get(k - 1).copied().unwrap_or(0.0);
                    r += a * (k as f64 * t).cos() + b * (k as f64 * t).sin();
                }
                (center[0] + r * t.cos(), center[1] + r * t.sin())
            }
        }
    }

    /// Sampled boundary polygon in f64, used for clearance computations.
    pub fn sample_polygon(&self, n: usize) -> Vec<(f64, f64)> {
        let prec = 64;
        (0..n)
            .map(|i| {
                let t = fl(prec, i as f64 / n as f64 * 2.0 * std::f64::consts::PI);
                self.point(&t, prec).to_f64()
            })
            .collect()
    }
}

fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = 0.618_033_988_749_894_9;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    fc.min(fd)
}

// ---------------------------------------------------------------------------
// tables
// ---------------------------------------------------------------------------

/// Outcome of the non-eclipse check for a valid table.
#[derive(Clone, Debug)]
pub struct NonEclipseCertificate {
    /// Smallest clearance between any pair hull and any other obstacle.
    pub min_clearance: f64,
    /// Smallest pairwise obstacle gap (used by the solver trust region).
    pub min_gap: f64,
}

/// An ordered list of obstacles with a validated non-eclipse certificate.
#[derive(Clone, Debug)]
pub struct BilliardTable {
    obstacles: Vec<ConvexObstacle>,
    certificate: NonEclipseCertificate,
}

const HULL_SAMPLES: usize = 1024;

impl BilliardTable {
    pub fn new(obstacles: Vec<ConvexObstacle>) -> Result<Self, Error> {
        let certificate = check_non_eclipse(&obstacles)?;
        Ok(BilliardTable {
            obstacles,
            certificate,
        })
    }

    pub fn obstacles(&self) -> &[ConvexObstacle] {
        &self.obstacles
    }

    pub fn obstacle(&self, i: usize) -> &ConvexObstacle {
        &self.obstacles[i]
    }

    /// Number of obstacles (symbols run over 1..=m).
    pub fn m(&self) -> usize {
        self.obstacles.len()
    }

    pub fn certificate(&self) -> &NonEclipseCertificate {
        &self.certificate
    }

    pub fn from_json(text: &str) -> Result<Self, Error> {
        let desc: TableDescription =
            serde_json::from_str(text).map_err(|e| Error::Malformed(e.to_string()))?;
        desc.build()
    }

    pub fn to_json(&self) -> String {
        let desc = TableDescription {
            obstacles: self.obstacles.iter().map(|o| o.shape().clone()).collect(),
        };
        serde_json::to_string_pretty(&desc).expect("shape serialization cannot fail")
    }

    /// Canonical bytes used for spectrum-store fingerprinting.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let desc = TableDescription {
            obstacles: self.obstacles.iter().map(|o| o.shape().clone()).collect(),
        };
        serde_json::to_vec(&desc).expect("shape serialization cannot fail")
    }
}

/// On-disk table description (see the file schema in the CLI docs).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TableDescription {
    pub obstacles: Vec<Shape>,
}

impl TableDescription {
    pub fn build(self) -> Result<BilliardTable, Error> {
        let obstacles = self
            .obstacles
            .into_iter()
            .map(ConvexObstacle::new)
            .collect::<Result<Vec<_>, _>>()?;
        BilliardTable::new(obstacles)
    }
}

/// Checks pairwise disjointness and the non-eclipse condition: for every pair
/// (i, j), the convex hull of O_i and O_j must be disjoint from every other
/// obstacle. Returns the minimum clearance over all pair/other combinations.
pub fn check_non_eclipse(obstacles: &[ConvexObstacle]) -> Result<NonEclipseCertificate, Error> {
    if obstacles.len() < 3 {
        return Err(Error::TooFewObstacles(obstacles.len()));
    }
    let polys: Vec<Vec<(f64, f64)>> = obstacles
        .iter()
        .map(|o| o.sample_polygon(HULL_SAMPLES))
        .collect();

    let mut min_gap = f64::INFINITY;
    for i in 0..polys.len() {
        for j in (i + 1)..polys.len() {
            let gap = poly_poly_distance(&polys[i], &polys[j]);
            if gap <= 0.0 {
                return Err(Error::ObstaclesOverlap(i + 1, j + 1));
            }
            min_gap = min_gap.min(gap);
        }
    }

    let mut min_clearance = f64::INFINITY;
    for i in 0..polys.len() {
        for j in (i + 1)..polys.len() {
            let mut pts = polys[i].clone();
            pts.extend_from_slice(&polys[j]);
            let hull = convex_hull(&pts);
            for (k, poly) in polys.iter().enumerate() {
                if k == i || k == j {
                    continue;
                }
                let clearance = poly_hull_clearance(poly, &hull);
                if clearance <= 0.0 {
                    return Err(Error::EclipseViolation {
                        i: i + 1,
                        j: j + 1,
                        k: k + 1,
                        depth: -clearance,
                    });
                }
                min_clearance = min_clearance.min(clearance);
            }
        }
    }
    Ok(NonEclipseCertificate {
        min_clearance,
        min_gap,
    })
}

/// Smallest pairwise gap between obstacle boundaries (sampled estimate);
/// used by the solver to cap Newton steps.
pub fn min_pairwise_gap(obstacles: &[ConvexObstacle]) -> f64 {
    let polys: Vec<Vec<(f64, f64)>> = obstacles.iter().map(|o| o.sample_polygon(256)).collect();
    let mut gap = f64::INFINITY;
    for i in 0..polys.len() {
        for j in (i + 1)..polys.len() {
            gap = gap.min(poly_poly_distance(&polys[i], &polys[j]));
        }
    }
    gap
}

/// Andrew monotone chain; returns the hull counterclockwise.
fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn seg_point_distance(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    let (abx, aby) = (b.0 - a.0, b.1 - a.1);
    let (apx, apy) = (p.0 - a.0, p.1 - a.1);
    let len2 = abx * abx + aby * aby;
    let t = if len2 > 0.0 {
        ((apx * abx + apy * aby) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (dx, dy) = (p.0 - (a.0 + t * abx), p.1 - (a.1 + t * aby));
    (dx * dx + dy * dy).sqrt()
}

fn poly_poly_distance(p: &[(f64, f64)], q: &[(f64, f64)]) -> f64 {
    // boundary-to-boundary distance; sampling density bounds the error
    let mut d = f64::INFINITY;
    for i in 0..p.len() {
        let a = p[i];
        let b = p[(i + 1) % p.len()];
        for &pt in q {
            d = d.min(seg_point_distance(a, b, pt));
        }
    }
    for i in 0..q.len() {
        let a = q[i];
        let b = q[(i + 1) % q.len()];
        for &pt in p {
            d = d.min(seg_point_distance(a, b, pt));
        }
    }
    d
}

fn point_in_convex(hull: &[(f64, f64)], p: (f64, f64)) -> bool {
    // hull is counterclockwise
    for i in 0..hull.len() {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
        if cross < 0.0 {
            return false;
        }
    }
    true
}

/// Signed clearance of a sampled obstacle boundary from a hull polygon;
/// negative means penetration of the deepest sample point.
fn poly_hull_clearance(poly: &[(f64, f64)], hull: &[(f64, f64)]) -> f64 {
    let mut clearance = f64::INFINITY;
    for &p in poly {
        let mut d = f64::INFINITY;
        for i in 0..hull.len() {
            d = d.min(seg_point_distance(hull[i], hull[(i + 1) % hull.len()], p));
        }
        let signed = if point_in_convex(hull, p) { -d } else { d };
        clearance = clearance.min(signed);
    }
    clearance
}

/// Three unit discs at the vertices of an equilateral triangle with the given
/// side length; the standard regression table.
pub fn equilateral_disc_table(side: f64, radius: f64) -> Result<BilliardTable, Error> {
    let h = side * 3f64.sqrt() / 2.0;
    let shapes = vec![
        Shape::Circle {
            center: [-side / 2.0, 0.0],
            radius,
        },
        Shape::Circle {
            center: [side / 2.0, 0.0],
            radius,
        },
        Shape::Circle {
            center: [0.0, h],
            radius,
        },
    ];
    TableDescription { obstacles: shapes }.build()
}
