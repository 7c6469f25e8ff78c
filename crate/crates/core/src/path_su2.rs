//! Sampled paths, squares and cubes in SU(2) = unit quaternions, the
//! composition and associator formulas of the homotopy bigroupoid, fillers,
//! and quadrature of the normalized Cartan 3-form ν with ∫_G ν = 1.
//!
//! Grids are uniform with N+1 samples per axis; a square is μ(s,t) with s
//! the homotopy parameter, a cube H(r,s,t). Dyadic reparametrizations hit
//! sample points exactly when 8 | N.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bicat::{Bicat, Cell1};
use crate::cech::{angle_dist, wrap};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error("endpoints do not match (gap {0:.3e})")]
    EndpointMismatch(f64),
    #[error("shared boundary paths do not match (gap {0:.3e})")]
    BoundaryMismatch(f64),
    #[error("cube faces inconsistent along {0}")]
    BoundaryInconsistent(String),
    #[error("boundary samples leave no point of S³ unhit; refine the grid")]
    NoUnhitPoint,
    #[error("bad grid: {0}")]
    BadGrid(String),
}

pub type Result<T> = std::result::Result<T, PathError>;

pub const MATCH_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct UQuat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<[f64; 4]> for UQuat {
    fn from(a: [f64; 4]) -> Self {
        UQuat { w: a[0], x: a[1], y: a[2], z: a[3] }
    }
}

impl From<UQuat> for [f64; 4] {
    fn from(q: UQuat) -> Self {
        [q.w, q.x, q.y, q.z]
    }
}

impl std::ops::Mul for UQuat {
    type Output = UQuat;
    fn mul(self, b: UQuat) -> UQuat {
        let a = self;
        UQuat {
            w: a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            x: a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            y: a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            z: a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        }
    }
}

pub type Vec3 = [f64; 3];

fn norm3(v: Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn det3(a: Vec3, b: Vec3, c: Vec3) -> f64 {
    a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0]) + a[2] * (b[0] * c[1] - b[1] * c[0])
}

impl UQuat {
    pub const ONE: UQuat = UQuat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Normalizes the given components.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        UQuat { w: w / n, x: x / n, y: y / n, z: z / n }
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Self {
        UQuat::new(self.w, self.x, self.y, self.z)
    }

    pub fn conj(self) -> Self {
        UQuat { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    pub fn neg(self) -> Self {
        UQuat { w: -self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    pub fn dot(&self, b: &UQuat) -> f64 {
        self.w * b.w + self.x * b.x + self.y * b.y + self.z * b.z
    }

    pub fn im(&self) -> Vec3 {
        [self.x, self.y, self.z]
    }

    /// Geodesic distance on the unit 3-sphere.
    pub fn dist(&self, b: &UQuat) -> f64 {
        let d = (*self - *b).norm();
        2.0 * (d / 2.0).min(1.0).asin()
    }

    pub fn exp(v: Vec3) -> Self {
        let t = norm3(v);
        if t < 1e-300 {
            return UQuat::ONE;
        }
        let s = t.sin() / t;
        UQuat { w: t.cos(), x: s * v[0], y: s * v[1], z: s * v[2] }
    }

    /// Principal logarithm, |log| ∈ [0, π]; at −1 the axis is `fallback`.
    pub fn log_or(self, fallback: Vec3) -> Vec3 {
        let v = self.im();
        let s = norm3(v);
        let t = s.atan2(self.w);
        if s < 1e-15 {
            if self.w > 0.0 {
                return v;
            }
            return fallback.map(|c| c * PI);
        }
        v.map(|c| c * t / s)
    }

    pub fn log(self) -> Vec3 {
        self.log_or([1.0, 0.0, 0.0])
    }

    pub fn powi(self, k: i64) -> Self {
        let base = if k < 0 { self.conj() } else { self };
        let mut out = UQuat::ONE;
        for _ in 0..k.unsigned_abs() {
            out = out * base;
        }
        out
    }

    pub fn is_unit(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }
}

impl std::ops::Sub for UQuat {
    type Output = UQuat;
    /// Componentwise difference (not a unit quaternion).
    fn sub(self, b: UQuat) -> UQuat {
        UQuat { w: self.w - b.w, x: self.x - b.x, y: self.y - b.y, z: self.z - b.z }
    }
}

const AXES: [Vec3; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Geodesic a → b; near-antipodal pairs follow the axis chosen by `tag`.
/// Returns whether the fallback was used.
pub fn slerp_tagged(a: UQuat, b: UQuat, t: f64, tag: usize) -> (UQuat, bool) {
    if a == b {
        return (a, false);
    }
    let d = a.conj() * b;
    let anti = d.w < -1.0 + 1e-12;
    let l = d.log_or(AXES[tag % 3]);
    let q = if t == 0.0 { a } else { a * UQuat::exp(l.map(|c| c * t)) };
    (q, anti)
}

pub fn slerp(a: UQuat, b: UQuat, t: f64) -> UQuat {
    slerp_tagged(a, b, t, 0).0
}

fn check_n(n: usize) -> Result<()> {
    if n < 8 || !n.is_multiple_of(8) {
        return Err(PathError::BadGrid(format!("N = {n} must be a multiple of 8")));
    }
    Ok(())
}

/// Locates t ∈ [0,1] on a grid of n cells.
fn locate(t: f64, n: usize) -> (usize, f64) {
    let x = (t.clamp(0.0, 1.0)) * n as f64;
    let i = (x.floor() as usize).min(n - 1);
    (i, x - i as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub n: usize,
    pub points: Vec<UQuat>,
}

impl Path {
    pub fn new(points: Vec<UQuat>) -> Result<Self> {
        let n = points.len().saturating_sub(1);
        check_n(n)?;
        if let Some(p) = points.iter().find(|p| !p.is_unit(1e-12)) {
            return Err(PathError::BadGrid(format!("sample {p:?} is not a unit quaternion")));
        }
        Ok(Path { n, points })
    }

    pub fn from_fn(n: usize, f: impl Fn(f64) -> UQuat) -> Result<Self> {
        Path::new((0..=n).map(|i| f(i as f64 / n as f64)).collect())
    }

    pub fn constant(x: UQuat, n: usize) -> Result<Self> {
        Path::new(vec![x; n + 1])
    }

    pub fn geodesic(a: UQuat, b: UQuat, n: usize) -> Result<Self> {
        let mut p = Path::from_fn(n, |t| slerp(a, b, t))?;
        p.points[n] = b;
        Ok(p)
    }

    pub fn start(&self) -> UQuat {
        self.points[0]
    }

    pub fn end(&self) -> UQuat {
        self.points[self.n]
    }

    pub fn at(&self, t: f64) -> UQuat {
        let (i, f) = locate(t, self.n);
        if f == 0.0 {
            return self.points[i];
        }
        slerp_tagged(self.points[i], self.points[i + 1], f, i).0
    }

    pub fn left_mul(&self, q: UQuat) -> Path {
        Path { n: self.n, points: self.points.iter().map(|&p| q * p).collect() }
    }

    pub fn reversed(&self) -> Path {
        Path { n: self.n, points: self.points.iter().rev().copied().collect() }
    }

    pub fn max_gap(&self, other: &Path) -> f64 {
        self.points.iter().zip(&other.points).map(|(a, b)| a.dist(b)).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Square {
    pub n: usize,
    /// row-major, index s·(N+1) + t
    pub points: Vec<UQuat>,
    /// Samples (s,t) interpolated along a fallback axis between antipodes.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub perturbed: Vec<[usize; 2]>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Vertical,
    Horizontal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Square {
    pub fn from_fn(n: usize, f: impl Fn(f64, f64) -> UQuat) -> Result<Self> {
        check_n(n)?;
        let mut points = Vec::with_capacity((n + 1) * (n + 1));
        for i in 0..=n {
            for j in 0..=n {
                points.push(f(i as f64 / n as f64, j as f64 / n as f64));
            }
        }
        Ok(Square { n, points, perturbed: vec![] })
    }

    fn from_grid(n: usize, f: impl Fn(usize, usize) -> UQuat) -> Self {
        let mut points = Vec::with_capacity((n + 1) * (n + 1));
        for i in 0..=n {
            for j in 0..=n {
                points.push(f(i, j));
            }
        }
        Square { n, points, perturbed: vec![] }
    }

    pub fn get(&self, i: usize, j: usize) -> UQuat {
        self.points[i * (self.n + 1) + j]
    }

    /// The path t ↦ μ(s_i, t).
    pub fn row(&self, i: usize) -> Path {
        Path { n: self.n, points: (0..=self.n).map(|j| self.get(i, j)).collect() }
    }

    /// The path s ↦ μ(s, t_j).
    pub fn col(&self, j: usize) -> Path {
        Path { n: self.n, points: (0..=self.n).map(|i| self.get(i, j)).collect() }
    }

    pub fn at(&self, s: f64, t: f64) -> UQuat {
        let (i, f) = locate(s, self.n);
        let a = self.row(i).at(t);
        if f == 0.0 {
            return a;
        }
        slerp_tagged(a, self.row(i + 1).at(t), f, i).0
    }

    /// The constant homotopy of a path.
    pub fn constant(p: &Path) -> Square {
        Square::from_grid(p.n, |_, j| p.points[j])
    }

    /// Inverse 2-cell: s ↦ 1 − s.
    pub fn reversed(&self) -> Square {
        let n = self.n;
        let mut sq = Square::from_grid(n, |i, j| self.get(n - i, j));
        sq.perturbed = self.perturbed.iter().map(|&[i, j]| [n - i, j]).collect();
        sq
    }

    pub fn left_mul(&self, q: UQuat) -> Square {
        Square { n: self.n, points: self.points.iter().map(|&p| q * p).collect(), perturbed: self.perturbed.clone() }
    }

    pub fn max_gap(&self, other: &Square) -> f64 {
        self.points.iter().zip(&other.points).map(|(a, b)| a.dist(b)).fold(0.0, f64::max)
    }
}

fn same_n(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(PathError::BadGrid(format!("grid sizes {a} and {b} differ")));
    }
    Ok(())
}

/// a∘b: first b, then a.
pub fn compose_paths(a: &Path, b: &Path) -> Result<Path> {
    same_n(a.n, b.n)?;
    let gap = b.end().dist(&a.start());
    if gap > MATCH_TOL {
        return Err(PathError::EndpointMismatch(gap));
    }
    let n = a.n;
    let points = (0..=n).map(|i| if 2 * i <= n { b.points[2 * i] } else { a.points[2 * i - n] }).collect();
    Ok(Path { n, points })
}

/// m1 after m2. Vertical: m2 is a homotopy c1 ⇒ c2 and m1 one c2 ⇒ c3.
/// Horizontal: m2 runs over the first half of t and m1 over the second.
pub fn compose_squares(m1: &Square, m2: &Square, mode: Mode) -> Result<Square> {
    same_n(m1.n, m2.n)?;
    let n = m1.n;
    match mode {
        Mode::Vertical => {
            let gap = m2.row(n).max_gap(&m1.row(0));
            if gap > MATCH_TOL {
                return Err(PathError::BoundaryMismatch(gap));
            }
            let mut sq = Square::from_grid(n, |i, j| if 2 * i <= n { m2.get(2 * i, j) } else { m1.get(2 * i - n, j) });
            sq.perturbed = m2
                .perturbed
                .iter()
                .filter(|p| p[0] % 2 == 0)
                .map(|p| [p[0] / 2, p[1]])
                .chain(m1.perturbed.iter().filter(|p| p[0] % 2 == 0 && p[0] > 0).map(|p| [(p[0] + n) / 2, p[1]]))
                .collect();
            Ok(sq)
        }
        Mode::Horizontal => {
            let gap = m2.col(n).max_gap(&m1.col(0));
            if gap > MATCH_TOL {
                return Err(PathError::BoundaryMismatch(gap));
            }
            Ok(Square::from_grid(n, |i, j| if 2 * j <= n { m2.get(i, 2 * j) } else { m1.get(i, 2 * j - n) }))
        }
    }
}

fn check_chain(paths: &[&Path]) -> Result<()> {
    for w in paths.windows(2) {
        same_n(w[0].n, w[1].n)?;
        let gap = w[1].end().dist(&w[0].start());
        if gap > MATCH_TOL {
            return Err(PathError::EndpointMismatch(gap));
        }
    }
    Ok(())
}

/// ā: (c34∘c23)∘c12 ⇒ c34∘(c23∘c12).
pub fn associator_square(c34: &Path, c23: &Path, c12: &Path) -> Result<Square> {
    check_chain(&[c34, c23, c12])?;
    let n = c12.n;
    let f = |s: f64, t: f64| {
        if t <= (2.0 - s) / 4.0 {
            c12.at(4.0 * t / (2.0 - s))
        } else if t <= (3.0 - s) / 4.0 {
            c23.at(4.0 * t - 2.0 + s)
        } else {
            c34.at((4.0 * t - 3.0 + s) / (1.0 + s))
        }
    };
    Square::from_fn(n, f)
}

/// Left: c ⇒ c∘1 with x1 held for t ≤ s/2. Right: c ⇒ 1∘c.
pub fn identity_square(c: &Path, side: Side) -> Result<Square> {
    let (x1, x2) = (c.start(), c.end());
    match side {
        Side::Left => Square::from_fn(c.n, |s, t| if t <= s / 2.0 { x1 } else { c.at((2.0 * t - s) / (2.0 - s)) }),
        Side::Right => Square::from_fn(c.n, |s, t| if t <= 1.0 / (s + 1.0) { c.at((s + 1.0) * t) } else { x2 }),
    }
}

/// Geodesic homotopy p0 ⇒ p1 with endpoints fixed.
pub fn fill_square(p0: &Path, p1: &Path) -> Result<Square> {
    same_n(p0.n, p1.n)?;
    let gap = p0.start().dist(&p1.start()).max(p0.end().dist(&p1.end()));
    if gap > MATCH_TOL {
        return Err(PathError::EndpointMismatch(gap));
    }
    let n = p0.n;
    let mut sq = Square::from_grid(n, |i, j| {
        if i == 0 {
            p0.points[j]
        } else if i == n {
            p1.points[j]
        } else if j == 0 {
            p0.points[0]
        } else if j == n {
            p0.points[n]
        } else {
            slerp_tagged(p0.points[j], p1.points[j], i as f64 / n as f64, j).0
        }
    });
    for j in 1..n {
        if slerp_tagged(p0.points[j], p1.points[j], 0.5, j).1 {
            sq.perturbed.extend((1..n).map(|i| [i, j]));
        }
    }
    Ok(sq)
}

/// The point a fraction u of the way along the chart segment ya → yb,
/// measured by arc length on S³ (the chart metric is 2|dy|/(1+|y|²)).
fn chart_lerp(ya: &Vec3, yb: &Vec3, u: f64) -> Vec3 {
    let d = [0, 1, 2].map(|i| yb[i] - ya[i]);
    let a = d.iter().map(|x| x * x).sum::<f64>();
    let tau = if a < 1e-24 {
        u
    } else {
        let b = 2.0 * (0..3).map(|i| ya[i] * d[i]).sum::<f64>();
        let c1 = ya.iter().map(|x| x * x).sum::<f64>() + 1.0;
        let sd = (4.0 * a * c1 - b * b).max(0.0).sqrt();
        let (t0, t1) = ((b / sd).atan(), ((2.0 * a + b) / sd).atan());
        (sd * (t0 + u * (t1 - t0)).tan() - b) / (2.0 * a)
    };
    [0, 1, 2].map(|i| ya[i] + tau * d[i])
}

/// Straight segment a → b in the stereographic chart from c (c ∉ {a, b}),
/// at constant speed. With c = −a this is the geodesic.
pub fn stereo_path(c: UQuat, a: UQuat, b: UQuat, n: usize) -> Result<Path> {
    let (ya, yb) = (stereo(c, a), stereo(c, b));
    let mut p = Path::from_fn(n, |t| stereo_inv(c, chart_lerp(&ya, &yb, t)))?;
    p.points[0] = a;
    p.points[n] = b;
    Ok(p)
}

/// Straight-line homotopy p0 ⇒ p1 in the stereographic chart from c.
pub fn stereo_square(c: UQuat, p0: &Path, p1: &Path) -> Result<Square> {
    same_n(p0.n, p1.n)?;
    let gap = p0.start().dist(&p1.start()).max(p0.end().dist(&p1.end()));
    if gap > MATCH_TOL {
        return Err(PathError::EndpointMismatch(gap));
    }
    let n = p0.n;
    let y0: Vec<Vec3> = p0.points.iter().map(|&q| stereo(c, q)).collect();
    let y1: Vec<Vec3> = p1.points.iter().map(|&q| stereo(c, q)).collect();
    Ok(Square::from_grid(n, |i, j| {
        if i == 0 {
            p0.points[j]
        } else if i == n {
            p1.points[j]
        } else if j == 0 {
            p0.points[0]
        } else if j == n {
            p0.points[n]
        } else {
            let s = i as f64 / n as f64;
            stereo_inv(c, chart_lerp(&y0[j], &y1[j], s))
        }
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    /// cells along r, s, t
    pub dims: [usize; 3],
    /// index (r·(ns+1) + s)·(nt+1) + t
    pub points: Vec<UQuat>,
}

impl Cube {
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * (self.dims[1] + 1) + j) * (self.dims[2] + 1) + k
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> UQuat {
        self.points[self.idx(i, j, k)]
    }

    pub fn from_fn(n: usize, f: impl Fn(f64, f64, f64) -> UQuat) -> Result<Self> {
        check_n(n)?;
        let h = 1.0 / n as f64;
        let mut points = Vec::with_capacity((n + 1).pow(3));
        for i in 0..=n {
            for j in 0..=n {
                for k in 0..=n {
                    points.push(f(i as f64 * h, j as f64 * h, k as f64 * h));
                }
            }
        }
        Ok(Cube { dims: [n; 3], points })
    }

    /// Cells r ∈ [from, to) as a cube of its own.
    pub fn slab(&self, from: usize, to: usize) -> Cube {
        let [_, ns, nt] = self.dims;
        let mut points = vec![];
        for i in from..=to {
            for j in 0..=ns {
                for k in 0..=nt {
                    points.push(self.get(i, j, k));
                }
            }
        }
        Cube { dims: [to - from, ns, nt], points }
    }

    pub fn left_mul(&self, q: UQuat) -> Cube {
        Cube { dims: self.dims, points: self.points.iter().map(|&p| q * p).collect() }
    }

    pub fn right_mul(&self, q: UQuat) -> Cube {
        Cube { dims: self.dims, points: self.points.iter().map(|&p| p * q).collect() }
    }

    pub fn face(&self, which: Face) -> Square {
        let n = self.dims[0];
        Square::from_grid(n, |a, b| match which {
            Face::R0 => self.get(0, a, b),
            Face::R1 => self.get(n, a, b),
            Face::S0 => self.get(a, 0, b),
            Face::S1 => self.get(a, n, b),
            Face::T0 => self.get(a, b, 0),
            Face::T1 => self.get(a, b, n),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Face {
    R0,
    R1,
    S0,
    S1,
    T0,
    T1,
}

/// Faces of a cube: r-faces indexed (s,t), s-faces (r,t), t-faces (r,s).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeFaces {
    pub r0: Square,
    pub r1: Square,
    pub s0: Square,
    pub s1: Square,
    pub t0: Square,
    pub t1: Square,
}

impl CubeFaces {
    /// Faces of the cube between two homotopies with the same boundary paths.
    pub fn between(m0: &Square, m1: &Square) -> Result<CubeFaces> {
        same_n(m0.n, m1.n)?;
        let n = m0.n;
        for (name, a, b) in [("s = 0", m0.row(0), m1.row(0)), ("s = 1", m0.row(n), m1.row(n))] {
            let gap = a.max_gap(&b);
            if gap > MATCH_TOL {
                return Err(PathError::BoundaryInconsistent(format!("{name} (gap {gap:.3e})")));
            }
        }
        for (name, a, b) in [("t = 0", m0.col(0), m1.col(0)), ("t = 1", m0.col(n), m1.col(n))] {
            let gap = a.max_gap(&b);
            if gap > MATCH_TOL {
                return Err(PathError::BoundaryInconsistent(format!("{name} (gap {gap:.3e})")));
            }
        }
        Ok(CubeFaces {
            r0: m0.clone(),
            r1: m1.clone(),
            s0: Square::constant(&m0.row(0)),
            s1: Square::constant(&m0.row(n)),
            t0: Square::constant(&m0.col(0)),
            t1: Square::constant(&m0.col(n)),
        })
    }

    fn n(&self) -> usize {
        self.r0.n
    }

    /// Boundary value at grid point (i,j,k) of the cube surface.
    fn boundary(&self, i: usize, j: usize, k: usize) -> Option<UQuat> {
        let n = self.n();
        if i == 0 {
            Some(self.r0.get(j, k))
        } else if i == n {
            Some(self.r1.get(j, k))
        } else if j == 0 {
            Some(self.s0.get(i, k))
        } else if j == n {
            Some(self.s1.get(i, k))
        } else if k == 0 {
            Some(self.t0.get(i, j))
        } else if k == n {
            Some(self.t1.get(i, j))
        } else {
            None
        }
    }

    fn check(&self) -> Result<()> {
        let n = self.n();
        for f in [&self.r1, &self.s0, &self.s1, &self.t0, &self.t1] {
            same_n(n, f.n)?;
        }
        type Edge<'a> = (&'a str, Box<dyn Fn(usize) -> (UQuat, UQuat) + 'a>);
        let edges: Vec<Edge> = vec![
            ("r=0,s=0", Box::new(|k| (self.r0.get(0, k), self.s0.get(0, k)))),
            ("r=0,s=1", Box::new(|k| (self.r0.get(n, k), self.s1.get(0, k)))),
            ("r=1,s=0", Box::new(|k| (self.r1.get(0, k), self.s0.get(n, k)))),
            ("r=1,s=1", Box::new(|k| (self.r1.get(n, k), self.s1.get(n, k)))),
            ("r=0,t=0", Box::new(|j| (self.r0.get(j, 0), self.t0.get(0, j)))),
            ("r=0,t=1", Box::new(|j| (self.r0.get(j, n), self.t1.get(0, j)))),
            ("r=1,t=0", Box::new(|j| (self.r1.get(j, 0), self.t0.get(n, j)))),
            ("r=1,t=1", Box::new(|j| (self.r1.get(j, n), self.t1.get(n, j)))),
            ("s=0,t=0", Box::new(|i| (self.s0.get(i, 0), self.t0.get(i, 0)))),
            ("s=0,t=1", Box::new(|i| (self.s0.get(i, n), self.t1.get(i, 0)))),
            ("s=1,t=0", Box::new(|i| (self.s1.get(i, 0), self.t0.get(i, n)))),
            ("s=1,t=1", Box::new(|i| (self.s1.get(i, n), self.t1.get(i, n)))),
        ];
        for (name, e) in edges {
            for a in 0..=n {
                let (p, q) = e(a);
                let gap = p.dist(&q);
                if gap > MATCH_TOL {
                    return Err(PathError::BoundaryInconsistent(format!("edge {name} (gap {gap:.3e})")));
                }
            }
        }
        Ok(())
    }

    pub fn all_boundary(&self) -> Vec<UQuat> {
        let mut v = vec![];
        for f in [&self.r0, &self.r1, &self.s0, &self.s1, &self.t0, &self.t1] {
            v.extend_from_slice(&f.points);
        }
        v
    }
}

/// Candidate projection poles: the 24-cell vertices and their dual.
pub fn pole_candidates() -> Vec<UQuat> {
    let mut v = vec![];
    for a in 0..4 {
        for sgn in [1.0, -1.0] {
            let mut c = [0.0; 4];
            c[a] = sgn;
            v.push(UQuat::from(c));
        }
    }
    for m in 0..16 {
        let s = |b: usize| if m >> b & 1 == 1 { -0.5 } else { 0.5 };
        v.push(UQuat::from([s(0), s(1), s(2), s(3)]));
    }
    for a in 0..4 {
        for b in a + 1..4 {
            for (sa, sb) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let mut c = [0.0; 4];
                c[a] = sa * std::f64::consts::FRAC_1_SQRT_2;
                c[b] = sb * std::f64::consts::FRAC_1_SQRT_2;
                v.push(UQuat::from(c));
            }
        }
    }
    v
}

/// Stereographic chart from the pole p: q ↦ Im(p̄q)/(1 − Re(p̄q)).
pub fn stereo(p: UQuat, q: UQuat) -> Vec3 {
    let r = p.conj() * q;
    let d = 1.0 - r.w;
    [r.x / d, r.y / d, r.z / d]
}

pub fn stereo_inv(p: UQuat, y: Vec3) -> UQuat {
    let n2 = y[0] * y[0] + y[1] * y[1] + y[2] * y[2];
    let r = UQuat { w: (n2 - 1.0) / (n2 + 1.0), x: 2.0 * y[0] / (n2 + 1.0), y: 2.0 * y[1] / (n2 + 1.0), z: 2.0 * y[2] / (n2 + 1.0) };
    (p * r).normalized()
}

/// Smallest distance from the chosen pole to any boundary sample below which
/// `fill_cube` gives up.
pub const UNHIT_MIN: f64 = 1e-3;

/// Fills six consistent faces: stereographic projection from a point far from
/// every boundary sample, then radial interpolation from the centroid.
pub fn fill_cube(faces: &CubeFaces) -> Result<Cube> {
    let n = faces.n();
    check_n(n)?;
    faces.check()?;
    let bd = faces.all_boundary();
    let (pole, clearance) = pole_candidates()
        .into_iter()
        .map(|p| (p, bd.iter().map(|q| q.dist(&p)).fold(f64::INFINITY, f64::min)))
        .fold((UQuat::ONE, -1.0), |best, c| if c.1 > best.1 { c } else { best });
    if clearance < UNHIT_MIN {
        return Err(PathError::NoUnhitPoint);
    }
    let proj = |q: UQuat| stereo(pole, q);
    let mut centroid = [0.0; 3];
    for q in &bd {
        let y = proj(*q);
        for a in 0..3 {
            centroid[a] += y[a] / bd.len() as f64;
        }
    }
    // projected faces for interpolation
    let pr = |sq: &Square| -> Vec<Vec3> { sq.points.iter().map(|&q| proj(q)).collect() };
    let fr = [pr(&faces.r0), pr(&faces.r1), pr(&faces.s0), pr(&faces.s1), pr(&faces.t0), pr(&faces.t1)];
    let bilin = |f: &Vec<Vec3>, a: f64, b: f64| -> Vec3 {
        let (i, fa) = locate(a, n);
        let (j, fb) = locate(b, n);
        let g = |i: usize, j: usize| f[i * (n + 1) + j];
        let mut out = [0.0; 3];
        for c in 0..3 {
            out[c] = (1.0 - fa) * (1.0 - fb) * g(i, j)[c]
                + fa * (1.0 - fb) * g(i + 1, j)[c]
                + (1.0 - fa) * fb * g(i, j + 1)[c]
                + fa * fb * g(i + 1, j + 1)[c];
        }
        out
    };
    let h = 1.0 / n as f64;
    let mut points = Vec::with_capacity((n + 1).pow(3));
    for i in 0..=n {
        for j in 0..=n {
            for k in 0..=n {
                if let Some(q) = faces.boundary(i, j, k) {
                    points.push(q);
                    continue;
                }
                let p = [i as f64 * h - 0.5, j as f64 * h - 0.5, k as f64 * h - 0.5];
                let lam = 2.0 * p.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                if lam == 0.0 {
                    points.push(stereo_inv(pole, centroid));
                    continue;
                }
                let b = p.map(|x| x / lam + 0.5);
                let ax = (0..3).max_by(|&a, &c| (p[a].abs()).total_cmp(&p[c].abs())).unwrap();
                let hi = p[ax] > 0.0;
                let y = match (ax, hi) {
                    (0, false) => bilin(&fr[0], b[1], b[2]),
                    (0, true) => bilin(&fr[1], b[1], b[2]),
                    (1, false) => bilin(&fr[2], b[0], b[2]),
                    (1, true) => bilin(&fr[3], b[0], b[2]),
                    (_, false) => bilin(&fr[4], b[0], b[1]),
                    (_, true) => bilin(&fr[5], b[0], b[1]),
                };
                let z = [0, 1, 2].map(|c| centroid[c] + lam * (y[c] - centroid[c]));
                points.push(stereo_inv(pole, z));
            }
        }
    }
    Ok(Cube { dims: [n; 3], points })
}

const KUHN: [([usize; 3], f64); 6] =
    [([0, 1, 2], 1.0), ([0, 2, 1], -1.0), ([1, 0, 2], -1.0), ([1, 2, 0], 1.0), ([2, 0, 1], 1.0), ([2, 1, 0], -1.0)];

/// Volume of the geodesic tetrahedron as a fraction of |S³| = 2π², signed by
/// the orientation of its right-translated gnomonic image.
pub fn tet_volume(v: [UQuat; 4]) -> f64 {
    let mut c = [0.0; 4];
    for q in &v {
        let a: [f64; 4] = (*q).into();
        for k in 0..4 {
            c[k] += a[k];
        }
    }
    let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-9 {
        return 0.0;
    }
    let c = UQuat::from(c.map(|x| x / norm));
    let cc = c.conj();
    let y: [Vec3; 4] = v.map(|q| {
        let r = q * cc;
        [r.x / r.w, r.y / r.w, r.z / r.w]
    });
    let e = |i: usize| [y[i][0] - y[0][0], y[i][1] - y[0][1], y[i][2] - y[0][2]];
    let vol = det3(e(1), e(2), e(3)) / 6.0;
    if vol == 0.0 {
        return 0.0;
    }
    // degree-2 rule for the density (1 + |y|²)⁻²
    const A: f64 = 0.585_410_196_624_968_5;
    const B: f64 = 0.138_196_601_125_010_5;
    let mut avg = 0.0;
    for i in 0..4 {
        let mut q = [0.0; 3];
        for (j, yj) in y.iter().enumerate() {
            let w = if i == j { A } else { B };
            for k in 0..3 {
                q[k] += w * yj[k];
            }
        }
        let r2 = q[0] * q[0] + q[1] * q[1] + q[2] * q[2];
        avg += 0.25 / ((1.0 + r2) * (1.0 + r2));
    }
    vol * avg / (2.0 * PI * PI)
}

fn cell_nu(c: &Cube, i: usize, j: usize, k: usize) -> f64 {
    let corner: [UQuat; 8] = std::array::from_fn(|b| c.get(i + (b & 1), j + (b >> 1 & 1), k + (b >> 2 & 1)));
    let mut total = 0.0;
    for (perm, sign) in KUHN {
        let mut at = 0;
        let mut v = [corner[0]; 4];
        for (step, &axis) in perm.iter().enumerate() {
            at |= 1 << axis;
            v[step + 1] = corner[at];
        }
        total += sign * tet_volume(v);
    }
    total
}

fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// ∫ H*ν for the piecewise geodesic interpolant of the samples: each cell
/// is split into six tetrahedra; summed in a fixed order.
pub fn integrate_nu_cube(c: &Cube) -> f64 {
    let [nr, ns, nt] = c.dims;
    let slabs: Vec<f64> = (0..nr)
        .into_par_iter()
        .map(|i| {
            let mut v = Vec::with_capacity(ns * nt);
            for j in 0..ns {
                for k in 0..nt {
                    v.push(cell_nu(c, i, j, k));
                }
            }
            pairwise_sum(&v)
        })
        .collect();
    pairwise_sum(&slabs)
}

/// The exponential chart (r,θ,φ) ∈ [0,π]×[0,π]×[0,2π] ↦ exp(r·n(θ,φ)),
/// covering SU(2) once with positive orientation.
pub fn exp_chart(r: f64, s: f64, t: f64) -> UQuat {
    let (rad, th, ph) = (PI * r, PI * s, 2.0 * PI * t);
    let n = [th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()];
    UQuat::exp(n.map(|c| c * rad))
}

/// Degree of f: S³ → SU(2) through the exponential chart.
pub fn degree_s3(f: impl Fn(UQuat) -> UQuat + Sync, n: usize) -> Result<f64> {
    let c = Cube::from_fn(n, |r, s, t| f(exp_chart(r, s, t)))?;
    Ok(integrate_nu_cube(&c))
}

/// Whether z2 = z1 + ∫F*ν mod 1 for the filled cube F between m1 and m2.
pub fn equiv_check(m1: &Square, z1: f64, m2: &Square, z2: f64, tol: f64) -> Result<bool> {
    let f = fill_cube(&CubeFaces::between(m1, m2)?)?;
    Ok(angle_dist(z2 - z1 - integrate_nu_cube(&f)) <= tol)
}

/// Self-homotopy of the constant path at 1 sweeping the sphere of radius ρ
/// around exp(ρ·k); it encloses ∫ν = (ρ − sin ρ cos ρ)/π.
pub fn bubble_square(rho: f64, n: usize) -> Result<Square> {
    let shift = UQuat::exp([0.0, 0.0, -rho]);
    Square::from_fn(n, |s, t| {
        let (u, v) = (2.0 * s - 1.0, 2.0 * t - 1.0);
        let rad = u.abs().max(v.abs());
        let th = PI * (1.0 - rad);
        let ph = v.atan2(u);
        let dir = [th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()];
        shift * UQuat::exp(dir.map(|c| c * rho))
    })
}

pub fn ball_volume(rho: f64) -> f64 {
    (rho - rho.sin() * rho.cos()) / PI
}

/// Cube coning the homotopy m: p ⇒ q over references r_p: base ⇒ p and
/// r_q: base ⇒ q. The s = 1 face is m with its homotopy parameter along r.
pub fn cone_cube(r_p: &Square, r_q: &Square, m: &Square) -> Result<Cube> {
    let n = m.n;
    same_n(n, r_p.n)?;
    same_n(n, r_q.n)?;
    let base = r_p.row(0);
    let faces = CubeFaces {
        r0: r_p.clone(),
        r1: r_q.clone(),
        s0: Square::constant(&base),
        s1: m.clone(),
        t0: Square::constant(&Path::constant(base.start(), n)?),
        t1: Square::constant(&Path::constant(base.end(), n)?),
    };
    fill_cube(&faces)
}

/// The five squares of the pentagon cycle at ((c45∘c34)∘c23)∘c12, in order.
pub fn pentagon_squares(c45: &Path, c34: &Path, c23: &Path, c12: &Path) -> Result<[Square; 5]> {
    check_chain(&[c45, c34, c23, c12])?;
    let cp = compose_paths;
    let c4534 = cp(c45, c34)?;
    let c3423 = cp(c34, c23)?;
    let c2312 = cp(c23, c12)?;
    Ok([
        compose_squares(&associator_square(c45, c34, c23)?, &Square::constant(c12), Mode::Horizontal)?,
        associator_square(c45, &c3423, c12)?,
        compose_squares(&Square::constant(c45), &associator_square(c34, c23, c12)?, Mode::Horizontal)?,
        associator_square(c45, c34, &c2312)?.reversed(),
        associator_square(&c4534, c23, c12)?.reversed(),
    ])
}

/// Breakpoints of the five bracketings of four paths, starting from
/// ((c45∘c34)∘c23)∘c12; piece k runs over [b_k, b_k+1], c12 first.
const BRACKETINGS: [[f64; 5]; 5] = [
    [0.0, 0.5, 0.75, 0.875, 1.0],
    [0.0, 0.5, 0.625, 0.75, 1.0],
    [0.0, 0.25, 0.375, 0.5, 1.0],
    [0.0, 0.125, 0.25, 0.5, 1.0],
    [0.0, 0.25, 0.5, 0.75, 1.0],
];

/// The reparametrization homotopy moving the breakpoints of the
/// concatenation of `pieces` linearly from b0 to b1.
pub fn reparam_square(pieces: [&Path; 4], b0: [f64; 5], b1: [f64; 5]) -> Result<Square> {
    check_chain(&[pieces[3], pieces[2], pieces[1], pieces[0]])?;
    Square::from_fn(pieces[0].n, |s, t| {
        let b: [f64; 5] = std::array::from_fn(|k| (1.0 - s) * b0[k] + s * b1[k]);
        let k = (0..3).find(|&k| t <= b[k + 1]).unwrap_or(3);
        pieces[k].at(((t - b[k]) / (b[k + 1] - b[k])).clamp(0.0, 1.0))
    })
}

/// |∫ν| mod 1 over the pentagon cycle filled against the constant homotopy.
///
/// The vertical composite of the five squares would leave the first of them
/// two sample rows at N = 32, so each square is coned separately over the
/// reparametrization homotopies from the first bracketing; the cones cancel
/// in the sum and the total is the integral over the filled cycle.
pub fn pentagon_defect(c45: &Path, c34: &Path, c23: &Path, c12: &Path) -> Result<f64> {
    let sq = pentagon_squares(c45, c34, c23, c12)?;
    let pieces = [c12, c23, c34, c45];
    let b = BRACKETINGS;
    let mut total = 0.0;
    for (i, m) in sq.iter().enumerate() {
        let r_p = reparam_square(pieces, b[0], b[i])?;
        let r_q = reparam_square(pieces, b[0], b[(i + 1) % 5])?;
        total += integrate_nu_cube(&cone_cube(&r_p, &r_q, m)?);
    }
    Ok(angle_dist(total))
}

/// The same cycle as one vertical composite filled directly.
pub fn pentagon_defect_composite(c45: &Path, c34: &Path, c23: &Path, c12: &Path) -> Result<f64> {
    let [sq1, sq2, sq3, sq4, sq5] = pentagon_squares(c45, c34, c23, c12)?;
    let v = |a: &Square, b: &Square| compose_squares(a, b, Mode::Vertical);
    let k = v(&sq5, &v(&sq4, &v(&sq3, &v(&sq2, &sq1)?)?)?)?;
    let base = Square::constant(&k.row(0));
    let f = fill_cube(&CubeFaces::between(&k, &base)?)?;
    Ok(angle_dist(integrate_nu_cube(&f)))
}

/// Four composable geodesics through five given points.
pub fn geodesic_chain(x: [UQuat; 5], n: usize) -> Result<[Path; 4]> {
    Ok([
        Path::geodesic(x[3], x[4], n)?,
        Path::geodesic(x[2], x[3], n)?,
        Path::geodesic(x[1], x[2], n)?,
        Path::geodesic(x[0], x[1], n)?,
    ])
}

/// Uniform on S³ by rejection from the 4-cube.
pub fn random_uquat<R: rand::Rng>(rng: &mut R) -> UQuat {
    loop {
        let c: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let n2: f64 = c.iter().map(|x| x * x).sum();
        if n2 > 1e-4 && n2 <= 1.0 {
            return UQuat::from(c).normalized();
        }
    }
}

// ---- sampled Π₂ as a bicategory ----

/// A finite piece of Π₂(SU(2)): objects the given points; 1-cells the
/// geodesic and one detour path for each ordered pair; g∘f is the geodesic
/// between the endpoints. 2-cells f ⇒ g are circle phases relative to the
/// reference homotopy fill_square(f,g), and every structure phase is ∫ν over
/// the filled cube comparing a composite of reference homotopies with the
/// reference itself.
pub fn pi2_bicat(points: &[UQuat], detour: Vec3, n: usize) -> Result<Bicat> {
    let k = points.len();
    let mut paths = vec![];
    let mut cells = vec![];
    let mut class = vec![];
    let mut geo = vec![vec![0; k]; k];
    for a in 0..k {
        for b in 0..k {
            let g = Path::geodesic(points[a], points[b], n)?;
            let mid = slerp(points[a], points[b], 0.5) * UQuat::exp(detour);
            let d = compose_paths(&Path::geodesic(mid, points[b], n)?, &Path::geodesic(points[a], mid, n)?)?;
            geo[a][b] = paths.len();
            for (p, lab) in [(g, "geodesic"), (d, "detour")] {
                cells.push(Cell1 { src: a, tgt: b, label: format!("{lab} {a}->{b}") });
                class.push(a * k + b);
                paths.push(p);
            }
        }
    }
    let m = paths.len();
    let reference = |f: usize, g: usize| fill_square(&paths[f], &paths[g]);
    // comparison homotopy K: concat(g,f) ⇒ geo
    let concat_to_geo = |g: usize, f: usize| -> Result<Square> {
        let c = compose_paths(&paths[g], &paths[f])?;
        fill_square(&c, &paths[geo[cells[f].src][cells[g].tgt]])
    };
    let phase = |composite: &Square, f: usize, g: usize| -> Result<f64> {
        let cube = fill_cube(&CubeFaces::between(&reference(f, g)?, composite)?)?;
        Ok(wrap(integrate_nu_cube(&cube)))
    };
    let vjoin = |a: &Square, b: &Square| compose_squares(a, b, Mode::Vertical);
    let mut b = Bicat { objects: (0..k).map(|a| format!("p{a}")).collect(), cells: cells.clone(), class, ..Default::default() };
    for f in 0..m {
        for g in 0..m {
            if b.class[f] != b.class[g] {
                continue;
            }
            for h in 0..m {
                if b.class[g] == b.class[h] {
                    let comp = vjoin(&reference(g, h)?, &reference(f, g)?)?;
                    b.vert.insert([f, g, h], phase(&comp, f, h)?);
                }
            }
        }
    }
    for f in 0..m {
        for g in 0..m {
            if cells[f].tgt != cells[g].src {
                continue;
            }
            let gf = geo[cells[f].src][cells[g].tgt];
            b.comp.insert([g, f], gf);
            let kf = concat_to_geo(g, f)?;
            for f2 in 0..m {
                for g2 in 0..m {
                    if b.class[f2] != b.class[f] || b.class[g2] != b.class[g] {
                        continue;
                    }
                    let star = compose_squares(&reference(g, g2)?, &reference(f, f2)?, Mode::Horizontal)?;
                    let route = vjoin(&concat_to_geo(g2, f2)?, &vjoin(&star, &kf.reversed())?)?;
                    b.horiz.insert([g, g2, f, f2], phase(&route, gf, gf)?);
                }
            }
        }
    }
    // associator: transport ā through the comparison homotopies
    for f in 0..m {
        for g in 0..m {
            if cells[f].tgt != cells[g].src {
                continue;
            }
            for h in 0..m {
                if cells[g].tgt != cells[h].src {
                    continue;
                }
                let (hg, gf) = (b.comp[&[h, g]], b.comp[&[g, f]]);
                let e = geo[cells[f].src][cells[h].tgt];
                let khg = compose_squares(&concat_to_geo(h, g)?, &Square::constant(&paths[f]), Mode::Horizontal)?;
                let left = vjoin(&concat_to_geo(hg, f)?, &khg)?;
                let kgf = compose_squares(&Square::constant(&paths[h]), &concat_to_geo(g, f)?, Mode::Horizontal)?;
                let right = vjoin(&concat_to_geo(h, gf)?, &kgf)?;
                let abar = associator_square(&paths[h], &paths[g], &paths[f])?;
                let route = vjoin(&right, &vjoin(&abar, &left.reversed())?)?;
                b.assoc.insert([h, g, f], phase(&route, e, e)?);
            }
        }
    }
    b.unit = (0..k).map(|a| geo[a][a]).collect();
    b.synthesize_units();
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bicat::check_bicat;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rq(seed: u64) -> Vec<UQuat> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        (0..8).map(|_| random_uquat(&mut r)).collect()
    }

    #[test]
    fn quaternion_basics() {
        let q = rq(1);
        let (a, b) = (q[0], q[1]);
        assert!((a * a.conj()).dist(&UQuat::ONE) < 1e-12);
        assert!(UQuat::exp(a.log()).dist(&a) < 1e-12);
        assert!(slerp(a, b, 1.0).dist(&b) < 1e-12);
        assert!((slerp(a, b, 0.5).dist(&a) - a.dist(&b) / 2.0).abs() < 1e-12);
        assert!(a.powi(3).dist(&(a * a * a)) < 1e-12);
        assert!((a.powi(-2) * a.powi(2)).dist(&UQuat::ONE) < 1e-12);
    }

    #[test]
    fn antipodal_slerp_is_deterministic() {
        let a = rq(2)[0];
        let (m, anti) = slerp_tagged(a, a.neg(), 0.5, 4);
        assert!(anti);
        assert!((m.dist(&a) - PI / 2.0).abs() < 1e-12);
        assert_eq!(m, slerp_tagged(a, a.neg(), 0.5, 4).0);
    }

    #[test]
    fn grid_sizes() {
        assert!(Path::constant(UQuat::ONE, 12).is_err());
        assert!(Path::constant(UQuat::ONE, 24).is_ok());
    }

    #[test]
    fn compose_with_constant() {
        let q = rq(3);
        let b = Path::geodesic(q[0], q[1], 16).unwrap();
        let c = compose_paths(&b, &Path::constant(q[0], 16).unwrap()).unwrap();
        assert!(c.points[..=8].iter().all(|p| *p == q[0]));
        assert_eq!(c.points[16], b.end());
        assert_eq!(c.points[12], b.points[8]);
        assert!(matches!(compose_paths(&b, &b), Err(PathError::EndpointMismatch(_))));
    }

    #[test]
    fn associator_rows_are_the_bracketings() {
        let q = rq(4);
        let [c34, c23, c12] = [
            Path::geodesic(q[2], q[3], 32).unwrap(),
            Path::geodesic(q[1], q[2], 32).unwrap(),
            Path::geodesic(q[0], q[1], 32).unwrap(),
        ];
        let a = associator_square(&c34, &c23, &c12).unwrap();
        let lhs = compose_paths(&compose_paths(&c34, &c23).unwrap(), &c12).unwrap();
        let rhs = compose_paths(&c34, &compose_paths(&c23, &c12).unwrap()).unwrap();
        assert!(a.row(0).max_gap(&lhs) <= 1e-9);
        assert!(a.row(32).max_gap(&rhs) <= 1e-9);
        assert!(a.col(0).points.iter().all(|p| p.dist(&q[0]) < 1e-12));
        let cst = Path::constant(q[5], 32).unwrap();
        let k = associator_square(&cst, &cst, &cst).unwrap();
        assert!(k.points.iter().all(|p| *p == q[5]));
    }

    #[test]
    fn identity_squares_bound_correctly() {
        let q = rq(5);
        let c = Path::geodesic(q[0], q[1], 16).unwrap();
        let l = identity_square(&c, Side::Left).unwrap();
        let r = identity_square(&c, Side::Right).unwrap();
        let one0 = Path::constant(q[0], 16).unwrap();
        let one1 = Path::constant(q[1], 16).unwrap();
        assert!(l.row(0).max_gap(&c) < 1e-12 && r.row(0).max_gap(&c) < 1e-12);
        assert!(l.row(16).max_gap(&compose_paths(&c, &one0).unwrap()) < 1e-9);
        assert!(r.row(16).max_gap(&compose_paths(&one1, &c).unwrap()) < 1e-9);
    }

    #[test]
    fn vertical_and_horizontal_composition() {
        let q = rq(6);
        let p0 = Path::geodesic(q[0], q[1], 16).unwrap();
        let p1 = compose_paths(&Path::geodesic(q[2], q[1], 16).unwrap(), &Path::geodesic(q[0], q[2], 16).unwrap()).unwrap();
        let mu = fill_square(&p0, &p1).unwrap();
        let v = compose_squares(&Square::constant(&p1), &mu, Mode::Vertical).unwrap();
        assert_eq!(v.row(8), mu.row(16));
        assert_eq!(v.row(4), mu.row(8));
        let nu = fill_square(&Path::geodesic(q[1], q[3], 16).unwrap(), &Path::geodesic(q[1], q[3], 16).unwrap()).unwrap();
        let h = compose_squares(&nu, &mu, Mode::Horizontal).unwrap();
        assert_eq!(h.row(0), compose_paths(&nu.row(0), &mu.row(0)).unwrap());
        assert!(compose_squares(&mu, &mu, Mode::Vertical).is_err());
    }

    #[test]
    fn fill_square_boundary_is_exact() {
        let q = rq(7);
        let p0 = Path::geodesic(q[0], q[1], 16).unwrap();
        let p1 = compose_paths(&Path::geodesic(q[2], q[1], 16).unwrap(), &Path::geodesic(q[0], q[2], 16).unwrap()).unwrap();
        let mu = fill_square(&p0, &p1).unwrap();
        assert_eq!(mu.row(0), p0);
        assert_eq!(mu.row(16), p1);
        assert!(mu.col(0).points.iter().all(|p| *p == q[0]));
        let flat = fill_square(&p0, &p0).unwrap();
        assert!((0..=16).all(|i| flat.row(i).max_gap(&p0) < 1e-12));
    }

    #[test]
    fn antipodal_fill_is_recorded() {
        let a = UQuat::ONE;
        let mid = UQuat::exp([PI / 2.0, 0.0, 0.0]);
        let through = compose_paths(&Path::geodesic(mid, a.neg(), 16).unwrap(), &Path::geodesic(a, mid, 16).unwrap()).unwrap();
        let back = Path::from_fn(16, |t| UQuat::exp([-PI * t, 0.0, 0.0])).unwrap();
        let sq = fill_square(&through, &back).unwrap();
        assert!(!sq.perturbed.is_empty());
    }

    #[test]
    fn constant_cube_and_one_parameter_subgroup() {
        let c = Cube::from_fn(8, |_, _, _| rq(8)[0]).unwrap();
        assert_eq!(integrate_nu_cube(&c), 0.0);
        let sub = Cube::from_fn(8, |r, s, t| UQuat::exp([0.0, r + s * s - t, 0.0])).unwrap();
        assert!(integrate_nu_cube(&sub).abs() < 1e-15);
    }

    #[test]
    fn normalization_and_invariance() {
        let c = Cube::from_fn(48, exp_chart).unwrap();
        let v = integrate_nu_cube(&c);
        assert!((v - 1.0).abs() <= 5e-3, "{v}");
        let q = rq(9)[0];
        assert!((integrate_nu_cube(&c.left_mul(q)) - v).abs() <= 1e-6);
        assert!((integrate_nu_cube(&c.right_mul(q)) - v).abs() <= 1e-6);
    }

    #[test]
    fn additivity_over_a_split() {
        let c = Cube::from_fn(16, |r, s, t| exp_chart(0.3 + 0.4 * r, s, 0.5 * t)).unwrap();
        let whole = integrate_nu_cube(&c);
        let parts = integrate_nu_cube(&c.slab(0, 8)) + integrate_nu_cube(&c.slab(8, 16));
        assert!((whole - parts).abs() <= 1e-12);
    }

    #[test]
    fn identity_has_degree_one() {
        let d = degree_s3(|q| q, 32).unwrap();
        assert!((d - 1.0).abs() < 1e-2, "{d}");
        let d2 = degree_s3(|q| q.powi(2), 32).unwrap();
        assert!((d2 - 2.0).abs() < 2e-2, "{d2}");
        let dm = degree_s3(|q| q.conj(), 32).unwrap();
        assert!((dm + 1.0).abs() < 1e-2, "{dm}");
    }

    #[test]
    fn stereo_path_has_constant_speed() {
        let q = rq(12);
        let p = stereo_path(q[0], q[1], q[2], 16).unwrap();
        let steps: Vec<f64> = (0..16).map(|i| p.points[i].dist(&p.points[i + 1])).collect();
        let (lo, hi) = steps.iter().fold((9.0f64, 0.0f64), |(a, b), &d| (a.min(d), b.max(d)));
        assert!(hi - lo < 1e-9, "{lo} {hi}");
        assert_eq!((p.start(), p.end()), (q[1], q[2]));
        let g = stereo_path(q[1].neg(), q[1], q[2], 16).unwrap();
        assert!(g.max_gap(&Path::geodesic(q[1], q[2], 16).unwrap()) < 1e-9);
    }

    #[test]
    fn fill_cube_constant_and_smoothness() {
        let x = rq(10)[0];
        let cst = Square::constant(&Path::constant(x, 8).unwrap());
        let c = fill_cube(&CubeFaces::between(&cst, &cst).unwrap()).unwrap();
        assert!(c.points.iter().all(|p| p.dist(&x) < 1e-12));
        let q = rq(11);
        let p0 = Path::geodesic(q[0], q[1], 16).unwrap();
        let p1 = compose_paths(&Path::geodesic(q[2], q[1], 16).unwrap(), &Path::geodesic(q[0], q[2], 16).unwrap()).unwrap();
        let mu = fill_square(&p0, &p1).unwrap();
        let f = fill_cube(&CubeFaces::between(&mu, &mu).unwrap()).unwrap();
        let n = 16;
        let (mut inner, mut outer) = (0.0f64, 0.0f64);
        for i in 0..=n {
            for j in 0..=n {
                for k in 0..=n {
                    let p = f.get(i, j, k);
                    for (di, dj, dk) in [(1, 0, 0), (0, 1, 0), (0, 0, 1)] {
                        let (a, b, c) = (i + di, j + dj, k + dk);
                        if a > n || b > n || c > n {
                            continue;
                        }
                        let d = p.dist(&f.get(a, b, c));
                        let on = |x: usize, y: usize| x == 0 || x == n || y == 0 || y == n;
                        let bd = match (di, dj) {
                            (1, _) => on(j, k),
                            (_, 1) => on(i, k),
                            _ => on(i, j),
                        };
                        if bd { outer = outer.max(d) } else { inner = inner.max(d) }
                    }
                }
            }
        }
        assert!(inner <= 3.0 * outer, "{inner} vs {outer}");
        assert!(f.face(Face::R0) == mu && f.face(Face::R1) == mu);
        assert!(integrate_nu_cube(&f).abs() < 1e-3);
    }

    #[test]
    fn bracketings_fill_against_the_associator() {
        let q = rq(15);
        let n = 32;
        let (c34, c23, c12) = (
            Path::geodesic(q[2], q[3], n).unwrap(),
            Path::geodesic(q[1], q[2], n).unwrap(),
            Path::geodesic(q[0], q[1], n).unwrap(),
        );
        let lhs = compose_paths(&compose_paths(&c34, &c23).unwrap(), &c12).unwrap();
        let rhs = compose_paths(&c34, &compose_paths(&c23, &c12).unwrap()).unwrap();
        let fs = fill_square(&lhs, &rhs).unwrap();
        let a = associator_square(&c34, &c23, &c12).unwrap();
        let f = fill_cube(&CubeFaces::between(&fs, &a).unwrap()).unwrap();
        assert!(angle_dist(integrate_nu_cube(&f)) <= 5e-3);
    }

    #[test]
    fn path_then_inverse_is_null() {
        let q = rq(16);
        let b = Path::geodesic(q[0], q[1], 16).unwrap();
        let d = compose_paths(&Path::geodesic(q[2], q[1], 16).unwrap(), &Path::geodesic(q[0], q[2], 16).unwrap()).unwrap();
        let back = compose_paths(&d.reversed(), &b).unwrap();
        let cst = Path::constant(q[0], 16).unwrap();
        let sq = fill_square(&back, &cst).unwrap();
        let f = fill_cube(&CubeFaces::between(&sq, &sq).unwrap()).unwrap();
        assert!(angle_dist(integrate_nu_cube(&f)) < 1e-6);
    }

    #[test]
    fn equiv_check_cases() {
        let q = rq(12);
        let p0 = Path::geodesic(q[0], q[1], 16).unwrap();
        let p1 = compose_paths(&Path::geodesic(q[2], q[1], 16).unwrap(), &Path::geodesic(q[0], q[2], 16).unwrap()).unwrap();
        let mu = fill_square(&p0, &p1).unwrap();
        assert!(equiv_check(&mu, 0.3, &mu, 0.3, 1e-6).unwrap());
        assert!(!equiv_check(&mu, 0.3, &mu, 0.8, 1e-3).unwrap());
    }

    #[test]
    fn bubble_changes_the_phase_by_its_volume() {
        let n = 32;
        let rho = 1.1;
        let one = Path::constant(UQuat::ONE, n).unwrap();
        let m1 = Square::constant(&one);
        let m2 = compose_squares(&bubble_square(rho, n).unwrap(), &m1, Mode::Vertical).unwrap();
        let v = ball_volume(rho);
        let f = fill_cube(&CubeFaces::between(&m1, &m2).unwrap()).unwrap();
        let got = integrate_nu_cube(&f);
        assert!((got.abs() - v).abs() < 2e-2, "{got} vs ±{v}");
        assert!(equiv_check(&m1, 0.1, &m2, 0.1 + got.signum() * v, 2e-2).unwrap());
        assert!(!equiv_check(&m1, 0.1, &m2, 0.1, 2e-2).unwrap());
    }

    #[test]
    fn pentagon_small_and_shrinking() {
        let q = rq(13);
        let x = [q[0], q[1], q[2], q[3], q[4]];
        let [a, b, c, d] = geodesic_chain(x, 16).unwrap();
        let d16 = pentagon_defect(&a, &b, &c, &d).unwrap();
        let [a, b, c, d] = geodesic_chain(x, 32).unwrap();
        let d32 = pentagon_defect(&a, &b, &c, &d).unwrap();
        assert!(d32 <= 5e-3, "{d32}");
        assert!(d32 <= d16 + 1e-4, "{d16} -> {d32}");
        let cst = Path::constant(q[0], 16).unwrap();
        assert!(pentagon_defect(&cst, &cst, &cst, &cst).unwrap() < 1e-15);
        // the five squares are the breakpoint homotopies between bracketings
        let sq = pentagon_squares(&a, &b, &c, &d).unwrap();
        for i in 0..5 {
            let r = reparam_square([&d, &c, &b, &a], BRACKETINGS[i], BRACKETINGS[(i + 1) % 5]).unwrap();
            assert!(r.max_gap(&sq[i]) < 1e-9, "square {i}");
        }
        let composite = pentagon_defect_composite(&a, &b, &c, &d).unwrap();
        assert!((composite - d32).abs() < 5e-2, "{composite} vs {d32}");
    }

    #[test]
    fn sampled_pi2_is_a_bicategory_at_coarse_tolerance() {
        let q = rq(14);
        let b = pi2_bicat(&q[..2], [0.0, 0.4, 0.2], 8).unwrap();
        let rep = check_bicat(&b, 5e-2);
        assert!(rep.pass(), "{rep:#?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn composition_boundaries_are_exact(seed in 0u64..1000) {
            let q = rq(seed);
            let a = Path::geodesic(q[1], q[2], 16).unwrap();
            let b = Path::geodesic(q[0], q[1], 16).unwrap();
            let c = compose_paths(&a, &b).unwrap();
            prop_assert!(c.start() == b.start() && c.end() == a.end());
            let sq = associator_square(&Path::geodesic(q[2], q[3], 16).unwrap(), &a, &b).unwrap();
            prop_assert!(sq.col(0).points.iter().all(|p| *p == q[0]));
            prop_assert!(sq.points.iter().all(|p| p.is_unit(1e-12)));
        }

        #[test]
        fn nu_is_bi_invariant(seed in 0u64..1000) {
            let q = rq(seed);
            let c = Cube::from_fn(8, |r, s, t| exp_chart(0.2 + 0.5 * r, 0.1 + 0.6 * s, t * 0.7)).unwrap();
            let v = integrate_nu_cube(&c);
            prop_assert!((integrate_nu_cube(&c.left_mul(q[0]).right_mul(q[1])) - v).abs() < 1e-9);
        }
    }
}
