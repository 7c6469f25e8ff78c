//! Finite bundle gerbes with canonically trivialized torsor fibers, their
//! morphisms over the identity, and transformations between morphisms.
//!
//! An element of P over (x1,x2) is a phase `a`, standing for a·1_{x1x2}.
//! The product is `u23 · u12 = a23 + a12 + c(x1,x2,x3)` in P over (x1,x3).

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, HashMap};
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cech::{angle_dist, face_key, parse_face_key, wrap};

pub type Point = u32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GerbeError {
    #[error("invalid surjection: {0}")]
    InvalidSurjection(String),
    #[error("product not associative on {0:?} (defect {1:.3e})")]
    NotAssociative(Vec<Point>, f64),
    #[error("cocycle not normalized on {0:?}")]
    NotNormalized(Vec<Point>),
    #[error("morphism not compatible with products on {0:?} (defect {1:.3e})")]
    NotCompatible(Vec<Point>, f64),
    #[error("map does not cover the identity of the base at {0}")]
    NotOverIdentity(Point),
    #[error("{0} and {1} are not in one fiber")]
    NotSameFiber(Point, Point),
    #[error("section does not descend across ({0},{1}) (defect {2:.3e})")]
    NotDescendable(Point, Point, f64),
    #[error("not composable: {0}")]
    NotComposable(String),
    #[error("bad data: {0}")]
    BadData(String),
}

pub type Result<T> = std::result::Result<T, GerbeError>;

/// Tolerance used by `make_gerbe` and `make_morphism`.
pub const VALIDATION_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FinSurjection {
    total: Vec<Point>,
    base: Vec<Point>,
    proj: BTreeMap<Point, Point>,
    fibers: BTreeMap<Point, Vec<Point>>,
}

impl FinSurjection {
    pub fn new(proj: BTreeMap<Point, Point>, base: Vec<Point>) -> Result<Self> {
        let mut base = base;
        base.sort_unstable();
        base.dedup();
        let mut fibers: BTreeMap<Point, Vec<Point>> = base.iter().map(|&m| (m, vec![])).collect();
        for (&x, &m) in &proj {
            fibers
                .get_mut(&m)
                .ok_or_else(|| GerbeError::InvalidSurjection(format!("{x} maps to unknown {m}")))?
                .push(x);
        }
        if let Some((m, _)) = fibers.iter().find(|(_, f)| f.is_empty()) {
            return Err(GerbeError::InvalidSurjection(format!("empty fiber over {m}")));
        }
        if base.is_empty() {
            return Err(GerbeError::InvalidSurjection("empty base".into()));
        }
        let total = proj.keys().copied().collect();
        Ok(FinSurjection { total, base, proj, fibers })
    }

    /// Surjection from fiber sizes; points are numbered consecutively.
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        let mut proj = BTreeMap::new();
        let mut next = 0;
        for (m, &n) in sizes.iter().enumerate() {
            for _ in 0..n {
                proj.insert(next, m as Point);
                next += 1;
            }
        }
        Self::new(proj, (0..sizes.len() as Point).collect())
    }

    pub fn total(&self) -> &[Point] {
        &self.total
    }

    pub fn base(&self) -> &[Point] {
        &self.base
    }

    pub fn proj(&self, x: Point) -> Option<Point> {
        self.proj.get(&x).copied()
    }

    pub fn proj_map(&self) -> &BTreeMap<Point, Point> {
        &self.proj
    }

    pub fn fiber(&self, m: Point) -> &[Point] {
        self.fibers.get(&m).map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// The chosen section: smallest id in each fiber.
    pub fn section(&self, m: Point) -> Point {
        self.fiber(m)[0]
    }

    pub fn same_fiber(&self, x1: Point, x2: Point) -> bool {
        matches!((self.proj(x1), self.proj(x2)), (Some(a), Some(b)) if a == b)
    }

    /// All n-tuples of points lying over a common base point.
    pub fn fiber_tuples(&self, n: usize) -> Vec<Vec<Point>> {
        let mut out = Vec::new();
        for f in self.fibers.values() {
            let mut idx = vec![0usize; n];
            loop {
                out.push(idx.iter().map(|&i| f[i]).collect());
                let mut p = n;
                loop {
                    if p == 0 {
                        break;
                    }
                    p -= 1;
                    idx[p] += 1;
                    if idx[p] < f.len() {
                        break;
                    }
                    idx[p] = 0;
                    if p == 0 {
                        p = usize::MAX;
                        break;
                    }
                }
                if p == usize::MAX || n == 0 {
                    break;
                }
            }
        }
        out
    }

    /// Restriction to the points over `sub` of the base.
    pub fn restrict(&self, sub: &[Point]) -> Result<Self> {
        let proj = self.proj.iter().filter(|(_, m)| sub.contains(m)).map(|(&x, &m)| (x, m)).collect();
        Self::new(proj, sub.to_vec())
    }
}

#[derive(Clone, Debug)]
pub struct FinGerbe {
    pub surj: FinSurjection,
    c: HashMap<[Point; 3], f64>,
    fingerprint: u64,
}

impl PartialEq for FinGerbe {
    fn eq(&self, other: &Self) -> bool {
        self.fingerprint == other.fingerprint && self.surj == other.surj
    }
}

fn fingerprint(surj: &FinSurjection, c: &HashMap<[Point; 3], f64>) -> u64 {
    let mut h = DefaultHasher::new();
    surj.proj_map().hash(&mut h);
    surj.base().hash(&mut h);
    let mut entries: Vec<([Point; 3], u64)> =
        c.iter().filter(|(_, v)| **v != 0.0).map(|(k, v)| (*k, v.to_bits())).collect();
    entries.sort_unstable();
    entries.hash(&mut h);
    h.finish()
}

impl FinGerbe {
    fn from_parts(surj: FinSurjection, c: HashMap<[Point; 3], f64>) -> Self {
        let fingerprint = fingerprint(&surj, &c);
        FinGerbe { surj, c, fingerprint }
    }

    pub fn c(&self, x1: Point, x2: Point, x3: Point) -> f64 {
        self.c.get(&[x1, x2, x3]).copied().unwrap_or(0.0)
    }

    pub fn cocycle(&self) -> &HashMap<[Point; 3], f64> {
        &self.c
    }

    pub fn trivial(surj: FinSurjection) -> Self {
        FinGerbe::from_parts(surj, HashMap::new())
    }

    /// u23 · u12 in P over (x1,x3).
    pub fn mul(&self, x1: Point, x2: Point, x3: Point, a23: f64, a12: f64) -> f64 {
        wrap(a23 + a12 + self.c(x1, x2, x3))
    }

    /// Inverse of u ∈ P(x1,x2), an element of P(x2,x1).
    pub fn inv(&self, x1: Point, x2: Point, a: f64) -> f64 {
        wrap(-a - self.c(x1, x2, x1))
    }

    /// Fiberwise potential b with δb = c, normalized so that b(x,x) = 0.
    pub fn potential(&self, x1: Point, x2: Point) -> f64 {
        let s = self.surj.section(self.surj.proj(x1).unwrap());
        self.c(s, x1, x2)
    }

    pub fn restrict(&self, sub: &[Point]) -> Result<Self> {
        let surj = self.surj.restrict(sub)?;
        let c = self
            .c
            .iter()
            .filter(|(k, _)| surj.proj(k[0]).is_some())
            .map(|(k, v)| (*k, *v))
            .collect();
        Ok(FinGerbe::from_parts(surj, c))
    }

    /// Largest associativity defect and the quadruple where it occurs.
    pub fn associativity_defect(&self) -> (f64, Option<Vec<Point>>) {
        let mut worst = (0.0, None);
        for q in self.surj.fiber_tuples(4) {
            let d = angle_dist(
                self.c(q[1], q[2], q[3]) - self.c(q[0], q[2], q[3]) + self.c(q[0], q[1], q[3])
                    - self.c(q[0], q[1], q[2]),
            );
            if d > worst.0 {
                worst = (d, Some(q));
            }
        }
        worst
    }
}

/// Validated gerbe. Keys of `c` outside the fiber triples are rejected.
pub fn make_gerbe(surj: FinSurjection, c: HashMap<[Point; 3], f64>) -> Result<FinGerbe> {
    for k in c.keys() {
        if !(surj.same_fiber(k[0], k[1]) && surj.same_fiber(k[1], k[2])) {
            return Err(GerbeError::BadData(format!("{k:?} is not a fiber triple")));
        }
    }
    let c = c.into_iter().map(|(k, v)| (k, wrap(v))).collect();
    let g = FinGerbe::from_parts(surj, c);
    for t in g.surj.fiber_tuples(2) {
        let (x, y) = (t[0], t[1]);
        if angle_dist(g.c(x, x, y)) > VALIDATION_TOL {
            return Err(GerbeError::NotNormalized(vec![x, x, y]));
        }
        if angle_dist(g.c(x, y, y)) > VALIDATION_TOL {
            return Err(GerbeError::NotNormalized(vec![x, y, y]));
        }
    }
    let (d, q) = g.associativity_defect();
    if d > VALIDATION_TOL {
        return Err(GerbeError::NotAssociative(q.unwrap(), d));
    }
    Ok(g)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GerbeMorphism {
    pub source: Arc<FinGerbe>,
    pub target: Arc<FinGerbe>,
    f: BTreeMap<Point, Point>,
    lambda: HashMap<[Point; 2], f64>,
}

impl GerbeMorphism {
    pub fn map(&self, x: Point) -> Point {
        self.f[&x]
    }

    pub fn point_map(&self) -> &BTreeMap<Point, Point> {
        &self.f
    }

    pub fn lambda_map(&self) -> &HashMap<[Point; 2], f64> {
        &self.lambda
    }

    pub fn lambda(&self, x1: Point, x2: Point) -> f64 {
        self.lambda.get(&[x1, x2]).copied().unwrap_or(0.0)
    }

    /// f̂ on P(x1,x2).
    pub fn apply(&self, x1: Point, x2: Point, a: f64) -> f64 {
        wrap(a + self.lambda(x1, x2))
    }

    pub fn identity(p: Arc<FinGerbe>) -> Self {
        let f = p.surj.total().iter().map(|&x| (x, x)).collect();
        GerbeMorphism { source: p.clone(), target: p, f, lambda: HashMap::new() }
    }

    /// Restriction to the part over `sub`, between the restricted gerbes.
    pub fn restrict(&self, sub: &[Point]) -> Result<Self> {
        let source = Arc::new(self.source.restrict(sub)?);
        let target = Arc::new(self.target.restrict(sub)?);
        Ok(self.restrict_between(source, target))
    }

    /// Restriction when the restricted source and target are already built.
    pub fn restrict_between(&self, source: Arc<FinGerbe>, target: Arc<FinGerbe>) -> Self {
        let f = self
            .f
            .iter()
            .filter(|(x, _)| source.surj.proj(**x).is_some())
            .map(|(&x, &y)| (x, y))
            .collect();
        let lambda = self
            .lambda
            .iter()
            .filter(|(k, _)| source.surj.proj(k[0]).is_some())
            .map(|(k, v)| (*k, *v))
            .collect();
        GerbeMorphism { source, target, f, lambda }
    }

    pub fn compatibility_defect(&self) -> (f64, Option<Vec<Point>>) {
        let (p, q) = (&self.source, &self.target);
        let mut worst = (0.0, None);
        for t in p.surj.fiber_tuples(3) {
            let (x1, x2, x3) = (t[0], t[1], t[2]);
            let lhs = self.lambda(x2, x3)
                + self.lambda(x1, x2)
                + q.c(self.map(x1), self.map(x2), self.map(x3));
            let rhs = self.lambda(x1, x3) + p.c(x1, x2, x3);
            let d = angle_dist(lhs - rhs);
            if d > worst.0 {
                worst = (d, Some(t));
            }
        }
        worst
    }
}

pub fn make_morphism(
    p: Arc<FinGerbe>,
    q: Arc<FinGerbe>,
    f: BTreeMap<Point, Point>,
    lambda: HashMap<[Point; 2], f64>,
) -> Result<GerbeMorphism> {
    if p.surj.base() != q.surj.base() {
        return Err(GerbeError::BadData("gerbes over different bases".into()));
    }
    for &x in p.surj.total() {
        let y = *f.get(&x).ok_or_else(|| GerbeError::BadData(format!("{x} unmapped")))?;
        if q.surj.proj(y) != p.surj.proj(x) {
            return Err(GerbeError::NotOverIdentity(x));
        }
    }
    for k in lambda.keys() {
        if !p.surj.same_fiber(k[0], k[1]) {
            return Err(GerbeError::BadData(format!("{k:?} is not a fiber pair")));
        }
    }
    let lambda = lambda.into_iter().map(|(k, v)| (k, wrap(v))).collect();
    let m = GerbeMorphism { source: p, target: q, f, lambda };
    let (d, t) = m.compatibility_defect();
    if d > VALIDATION_TOL {
        return Err(GerbeError::NotCompatible(t.unwrap(), d));
    }
    Ok(m)
}

/// g∘f.
pub fn compose_morphisms(f: &GerbeMorphism, g: &GerbeMorphism) -> Result<GerbeMorphism> {
    if *f.target != *g.source {
        return Err(GerbeError::NotComposable("target of f is not source of g".into()));
    }
    let map = f.f.iter().map(|(&x, &y)| (x, g.map(y))).collect();
    let mut lambda = HashMap::new();
    for t in f.source.surj.fiber_tuples(2) {
        let v = wrap(f.lambda(t[0], t[1]) + g.lambda(f.map(t[0]), f.map(t[1])));
        if v != 0.0 {
            lambda.insert([t[0], t[1]], v);
        }
    }
    Ok(GerbeMorphism { source: f.source.clone(), target: g.target.clone(), f: map, lambda })
}

fn check_parallel(f: &GerbeMorphism, g: &GerbeMorphism) -> Result<()> {
    if !(Arc::ptr_eq(&f.source, &g.source) || *f.source == *g.source)
        || !(Arc::ptr_eq(&f.target, &g.target) || *f.target == *g.target)
    {
        return Err(GerbeError::NotComposable("morphisms are not parallel".into()));
    }
    Ok(())
}

/// φ_{f,g}(v) = ĝ(u)(v f̂(u⁻¹)) for v ∈ Q(f x1, g x1), evaluated with the
/// given u ∈ P(x1,x2). The result lies in Q(f x2, g x2).
pub fn phi_fg_with(
    f: &GerbeMorphism,
    g: &GerbeMorphism,
    x1: Point,
    x2: Point,
    v: f64,
    u: f64,
) -> Result<f64> {
    check_parallel(f, g)?;
    let (p, q) = (&f.source, &f.target);
    if !p.surj.same_fiber(x1, x2) {
        return Err(GerbeError::NotSameFiber(x1, x2));
    }
    let u_inv = p.inv(x1, x2, u);
    let fu_inv = f.apply(x2, x1, u_inv); // Q(f x2, f x1)
    let w = q.mul(f.map(x2), f.map(x1), g.map(x1), v, fu_inv); // Q(f x2, g x1)
    let gu = g.apply(x1, x2, u); // Q(g x1, g x2)
    Ok(q.mul(f.map(x2), g.map(x1), g.map(x2), gu, w))
}

pub fn phi_fg(f: &GerbeMorphism, g: &GerbeMorphism, x1: Point, x2: Point, v: f64) -> Result<f64> {
    phi_fg_with(f, g, x1, x2, v, 0.0)
}

/// Section of D_{f,g} on the base, recorded at the chosen section of X → M.
#[derive(Clone, Debug, PartialEq)]
pub struct Transformation {
    pub source: GerbeMorphism,
    pub target: GerbeMorphism,
    pub theta: BTreeMap<Point, f64>,
}

impl Transformation {
    pub fn identity(f: &GerbeMorphism) -> Self {
        let theta = f.source.surj.base().iter().map(|&m| (m, 0.0)).collect();
        Transformation { source: f.clone(), target: f.clone(), theta }
    }

    pub fn new(f: &GerbeMorphism, g: &GerbeMorphism, theta: BTreeMap<Point, f64>) -> Result<Self> {
        check_parallel(f, g)?;
        if theta.keys().copied().collect::<Vec<_>>() != f.source.surj.base() {
            return Err(GerbeError::BadData("theta must cover the base".into()));
        }
        let theta = theta.into_iter().map(|(k, v)| (k, wrap(v))).collect();
        Ok(Transformation { source: f.clone(), target: g.clone(), theta })
    }

    /// Largest angle distance between two transformations with equal ends.
    pub fn distance(&self, other: &Self) -> f64 {
        self.theta
            .iter()
            .map(|(m, a)| angle_dist(a - other.theta[m]))
            .fold(0.0, f64::max)
    }
}

pub fn descend_section(
    f: &GerbeMorphism,
    g: &GerbeMorphism,
    theta_hat: &BTreeMap<Point, f64>,
    tol: f64,
) -> Result<Transformation> {
    check_parallel(f, g)?;
    let surj = &f.source.surj;
    for t in surj.fiber_tuples(2) {
        let (x1, x2) = (t[0], t[1]);
        let a = *theta_hat.get(&x1).ok_or_else(|| GerbeError::BadData(format!("{x1} missing")))?;
        let b = *theta_hat.get(&x2).ok_or_else(|| GerbeError::BadData(format!("{x2} missing")))?;
        let d = angle_dist(phi_fg(f, g, x1, x2, a)? - b);
        if d > tol {
            return Err(GerbeError::NotDescendable(x1, x2, d));
        }
    }
    let theta = surj.base().iter().map(|&m| (m, wrap(theta_hat[&surj.section(m)]))).collect();
    Ok(Transformation { source: f.clone(), target: g.clone(), theta })
}

pub fn lift_section(t: &Transformation) -> BTreeMap<Point, f64> {
    let surj = &t.source.source.surj;
    let mut out = BTreeMap::new();
    for &m in surj.base() {
        let s = surj.section(m);
        for &x in surj.fiber(m) {
            let v = phi_fg(&t.source, &t.target, s, x, t.theta[&m]).unwrap();
            out.insert(x, v);
        }
    }
    out
}

/// t2·t1 for t1: f ⇒ g and t2: g ⇒ h. The product of lifts at the section s
/// carries the correction c_Q(f s, g s, h s).
pub fn vcompose(t1: &Transformation, t2: &Transformation) -> Result<Transformation> {
    if t1.target != t2.source {
        return Err(GerbeError::NotComposable("middle morphisms differ".into()));
    }
    let (f, g, h) = (&t1.source, &t1.target, &t2.target);
    let q = &f.target;
    let surj = &f.source.surj;
    let theta = surj
        .base()
        .iter()
        .map(|&m| {
            let s = surj.section(m);
            (m, wrap(t2.theta[&m] + t1.theta[&m] + q.c(f.map(s), g.map(s), h.map(s))))
        })
        .collect();
    Ok(Transformation { source: f.clone(), target: h.clone(), theta })
}

/// θ: f1 ⇒ f2 over P → Q and λ: g1 ⇒ g2 over Q → R give g1∘f1 ⇒ g2∘f2,
/// with lift ĝ2(θ̂(x)) · λ̂(f1 x).
pub fn hcompose(theta: &Transformation, lambda: &Transformation) -> Result<Transformation> {
    let (f1, f2) = (&theta.source, &theta.target);
    let (g1, g2) = (&lambda.source, &lambda.target);
    let a = compose_morphisms(f1, g1)?;
    let b = compose_morphisms(f2, g2)?;
    let r = &g1.target;
    let th = lift_section(theta);
    let la = lift_section(lambda);
    let mut lifted = BTreeMap::new();
    for &x in f1.source.surj.total() {
        let (y1, y2) = (f1.map(x), f2.map(x));
        let gth = g2.apply(y1, y2, th[&x]); // R(g2 y1, g2 y2)
        let v = r.mul(g1.map(y1), g2.map(y1), g2.map(y2), gth, la[&y1]);
        lifted.insert(x, v);
    }
    descend_section(&a, &b, &lifted, 1e-9)
}

/// Fiber of P over m viewed as a groupoid: objects are points, each hom-set
/// is a circle of phases, composition uses c.
#[derive(Clone, Debug)]
pub struct Groupoid {
    pub objects: Vec<Point>,
    gerbe: Arc<FinGerbe>,
}

impl Groupoid {
    pub fn compose(&self, x1: Point, x2: Point, x3: Point, a23: f64, a12: f64) -> f64 {
        self.gerbe.mul(x1, x2, x3, a23, a12)
    }

    pub fn inverse(&self, x1: Point, x2: Point, a: f64) -> f64 {
        self.gerbe.inv(x1, x2, a)
    }

    /// Worst defect over identity, associativity and inverse laws, using the
    /// supplied sample phases for each hom-set.
    pub fn check(&self, samples: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        let ob = &self.objects;
        for &x in ob {
            for &y in ob {
                for &a in samples {
                    worst = worst.max(angle_dist(self.compose(x, y, y, 0.0, a) - a));
                    worst = worst.max(angle_dist(self.compose(x, x, y, a, 0.0) - a));
                    let b = self.inverse(x, y, a);
                    worst = worst.max(angle_dist(self.compose(x, y, x, b, a)));
                    worst = worst.max(angle_dist(self.compose(y, x, y, a, b)));
                }
                for &z in ob {
                    for &w in ob {
                        for (i, &a) in samples.iter().enumerate() {
                            let b = samples[(i + 1) % samples.len()];
                            let c = samples[(i + 2) % samples.len()];
                            let left = self.compose(x, z, w, c, self.compose(x, y, z, b, a));
                            let right = self.compose(x, y, w, self.compose(y, z, w, c, b), a);
                            worst = worst.max(angle_dist(left - right));
                        }
                    }
                }
            }
        }
        worst
    }
}

pub fn groupoid_at(p: &Arc<FinGerbe>, m: Point) -> Result<Groupoid> {
    let objects = p.surj.fiber(m).to_vec();
    if objects.is_empty() {
        return Err(GerbeError::BadData(format!("{m} not in base")));
    }
    Ok(Groupoid { objects, gerbe: p.clone() })
}

// ---- random fixtures ----

pub fn random_surjection<R: Rng>(rng: &mut R, base: usize, max_fiber: usize) -> FinSurjection {
    let sizes: Vec<usize> = (0..base).map(|_| rng.gen_range(1..=max_fiber)).collect();
    FinSurjection::from_sizes(&sizes).unwrap()
}

/// c = δb for random normalized fiber-pair phases b.
pub fn random_gerbe<R: Rng>(rng: &mut R, surj: FinSurjection) -> FinGerbe {
    let mut b = HashMap::new();
    for t in surj.fiber_tuples(2) {
        if t[0] != t[1] {
            b.insert([t[0], t[1]], rng.gen::<f64>());
        }
    }
    let bb = |x: Point, y: Point| b.get(&[x, y]).copied().unwrap_or(0.0);
    let mut c = HashMap::new();
    for t in surj.fiber_tuples(3) {
        let v = wrap(bb(t[1], t[2]) - bb(t[0], t[2]) + bb(t[0], t[1]));
        if v != 0.0 {
            c.insert([t[0], t[1], t[2]], v);
        }
    }
    make_gerbe(surj, c).expect("coboundaries are gerbes")
}

/// Random fiber-preserving map with λ = b_P − f*b_Q + δμ.
pub fn random_morphism<R: Rng>(rng: &mut R, p: &Arc<FinGerbe>, q: &Arc<FinGerbe>) -> GerbeMorphism {
    let mut f = BTreeMap::new();
    let mut mu = BTreeMap::new();
    for &x in p.surj.total() {
        let fib = q.surj.fiber(p.surj.proj(x).unwrap());
        f.insert(x, fib[rng.gen_range(0..fib.len())]);
        mu.insert(x, rng.gen::<f64>());
    }
    let mut lambda = HashMap::new();
    for t in p.surj.fiber_tuples(2) {
        let (x1, x2) = (t[0], t[1]);
        let v = p.potential(x1, x2) - q.potential(f[&x1], f[&x2]) + mu[&x2] - mu[&x1];
        lambda.insert([x1, x2], v);
    }
    make_morphism(p.clone(), q.clone(), f, lambda).expect("generator is compatible")
}

pub fn random_transformation<R: Rng>(
    rng: &mut R,
    f: &GerbeMorphism,
    g: &GerbeMorphism,
) -> Transformation {
    let theta = f.source.surj.base().iter().map(|&m| (m, rng.gen::<f64>())).collect();
    Transformation::new(f, g, theta).unwrap()
}

// ---- JSON ----

fn key_tuple<const N: usize>(s: &str) -> Result<[Point; N]> {
    let v = parse_face_key(s).ok_or_else(|| GerbeError::BadData(format!("bad key {s:?}")))?;
    v.try_into().map_err(|_| GerbeError::BadData(format!("key {s:?} needs {N} entries")))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SurjectionJson {
    pub base: Vec<Point>,
    /// point id → base point
    pub proj: BTreeMap<String, Point>,
}

impl SurjectionJson {
    pub fn from_surj(s: &FinSurjection) -> Self {
        SurjectionJson {
            base: s.base().to_vec(),
            proj: s.proj_map().iter().map(|(x, m)| (x.to_string(), *m)).collect(),
        }
    }

    pub fn build(&self) -> Result<FinSurjection> {
        let mut proj = BTreeMap::new();
        for (k, &m) in &self.proj {
            let [x] = key_tuple::<1>(k)?;
            proj.insert(x, m);
        }
        FinSurjection::new(proj, self.base.clone())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GerbeJson {
    pub surj: SurjectionJson,
    #[serde(default)]
    pub c: BTreeMap<String, f64>,
}

impl GerbeJson {
    pub fn from_gerbe(g: &FinGerbe) -> Self {
        let mut c = BTreeMap::new();
        for (k, &v) in &g.c {
            if v != 0.0 {
                c.insert(face_key(k), v);
            }
        }
        GerbeJson { surj: SurjectionJson::from_surj(&g.surj), c }
    }

    pub fn build(&self) -> Result<FinGerbe> {
        let surj = self.surj.build()?;
        let mut c = HashMap::new();
        for (k, &v) in &self.c {
            c.insert(key_tuple::<3>(k)?, v);
        }
        make_gerbe(surj, c)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MorphismJson {
    pub map: BTreeMap<String, Point>,
    #[serde(default)]
    pub lambda: BTreeMap<String, f64>,
}

impl MorphismJson {
    pub fn from_morphism(m: &GerbeMorphism) -> Self {
        MorphismJson {
            map: m.f.iter().map(|(x, y)| (x.to_string(), *y)).collect(),
            lambda: m
                .lambda
                .iter()
                .filter(|(_, v)| **v != 0.0)
                .map(|(k, v)| (face_key(k), *v))
                .collect(),
        }
    }

    pub fn build(&self, p: Arc<FinGerbe>, q: Arc<FinGerbe>) -> Result<GerbeMorphism> {
        let mut f = BTreeMap::new();
        for (k, &y) in &self.map {
            f.insert(key_tuple::<1>(k)?[0], y);
        }
        let mut lambda = HashMap::new();
        for (k, &v) in &self.lambda {
            lambda.insert(key_tuple::<2>(k)?, v);
        }
        make_morphism(p, q, f, lambda)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransformationJson {
    pub theta: BTreeMap<String, f64>,
}

impl TransformationJson {
    pub fn from_transformation(t: &Transformation) -> Self {
        TransformationJson { theta: t.theta.iter().map(|(m, v)| (m.to_string(), *v)).collect() }
    }

    pub fn build(&self, f: &GerbeMorphism, g: &GerbeMorphism) -> Result<Transformation> {
        let mut theta = BTreeMap::new();
        for (k, &v) in &self.theta {
            theta.insert(key_tuple::<1>(k)?[0], v);
        }
        Transformation::new(f, g, theta)
    }
}
