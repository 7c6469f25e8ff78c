//! Descent of circle bundles along finite surjections, and gluing of bundle
//! gerbes from 2-descent data (Q_i, φ_ij, ψ_ijk) on a finite cover.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cech::{angle_dist, face_key, parse_face_key, wrap};
use crate::gerbe::{
    self, compose_morphisms, descend_section, make_gerbe, make_morphism, phi_fg, FinGerbe,
    FinSurjection, GerbeError, GerbeJson, GerbeMorphism, MorphismJson, Point, Transformation,
};
use crate::report::{Report, Worst};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DescentError {
    #[error("descent cocycle fails on {0:?} (defect {1:.3e})")]
    CocycleFails(Vec<Point>, f64),
    #[error("map is not compatible with the transports at ({0},{1}) (defect {2:.3e})")]
    NotCompatible(Point, Point, f64),
    #[error("not a trivialization on {0:?} (defect {1:.3e})")]
    NotATrivialization(Vec<Point>, f64),
    #[error("2-descent data invalid: {0}")]
    Invalid(String),
    #[error(transparent)]
    Gerbe(#[from] GerbeError),
}

pub type Result<T> = std::result::Result<T, DescentError>;

/// Circle bundle on X with transport v ↦ v + phi(x1,x2) between points of one fiber.
#[derive(Clone, Debug, PartialEq)]
pub struct DescentBundle {
    pub surj: FinSurjection,
    phi: HashMap<[Point; 2], f64>,
}

impl DescentBundle {
    pub fn new(surj: FinSurjection, phi: HashMap<[Point; 2], f64>) -> Result<Self> {
        let b = DescentBundle { surj, phi: phi.into_iter().map(|(k, v)| (k, wrap(v))).collect() };
        for t in b.surj.fiber_tuples(1) {
            let d = angle_dist(b.phi(t[0], t[0]));
            if d > gerbe::VALIDATION_TOL {
                return Err(DescentError::CocycleFails(vec![t[0], t[0]], d));
            }
        }
        for t in b.surj.fiber_tuples(3) {
            let d = angle_dist(b.phi(t[0], t[1]) + b.phi(t[1], t[2]) - b.phi(t[0], t[2]));
            if d > gerbe::VALIDATION_TOL {
                return Err(DescentError::CocycleFails(t, d));
            }
        }
        Ok(b)
    }

    pub fn trivial(surj: FinSurjection) -> Self {
        DescentBundle { surj, phi: HashMap::new() }
    }

    /// phi = δb for b: X → angle.
    pub fn coboundary(surj: FinSurjection, b: &BTreeMap<Point, f64>) -> Self {
        let mut phi = HashMap::new();
        for t in surj.fiber_tuples(2) {
            phi.insert([t[0], t[1]], wrap(b[&t[1]] - b[&t[0]]));
        }
        DescentBundle { surj, phi }
    }

    pub fn phi(&self, x1: Point, x2: Point) -> f64 {
        self.phi.get(&[x1, x2]).copied().unwrap_or(0.0)
    }

    pub fn tensor(&self, other: &Self) -> Self {
        assert_eq!(self.surj, other.surj);
        let mut phi = HashMap::new();
        for t in self.surj.fiber_tuples(2) {
            phi.insert([t[0], t[1]], wrap(self.phi(t[0], t[1]) + other.phi(t[0], t[1])));
        }
        DescentBundle { surj: self.surj.clone(), phi }
    }
}

/// The descended bundle is trivial on the finite base; ψ identifies each
/// fiber P_x with the fiber at the chosen section.
#[derive(Clone, Debug, PartialEq)]
pub struct Descended {
    pub psi: BTreeMap<Point, f64>,
}

/// ψ(x) = phi(s(π x), x), so that ψ(x2) − ψ(x1) = phi(x1,x2).
pub fn descend(b: &DescentBundle) -> Descended {
    let mut psi = BTreeMap::new();
    for &m in b.surj.base() {
        let s = b.surj.section(m);
        for &x in b.surj.fiber(m) {
            psi.insert(x, b.phi(s, x));
        }
    }
    Descended { psi }
}

/// Bundle map (P,phi) → (Q,psi) as a phase shift per point.
#[derive(Clone, Debug, PartialEq)]
pub struct BundleMap {
    pub shift: BTreeMap<Point, f64>,
}

/// Induced map on the base, m ↦ shift at the section.
pub fn descend_map(
    p: &DescentBundle,
    q: &DescentBundle,
    f: &BundleMap,
) -> Result<BTreeMap<Point, f64>> {
    for t in p.surj.fiber_tuples(2) {
        let (x1, x2) = (t[0], t[1]);
        let d = angle_dist(q.phi(x1, x2) + f.shift[&x1] - f.shift[&x2] - p.phi(x1, x2));
        if d > gerbe::VALIDATION_TOL {
            return Err(DescentError::NotCompatible(x1, x2, d));
        }
    }
    Ok(p.surj.base().iter().map(|&m| (m, wrap(f.shift[&p.surj.section(m)]))).collect())
}

pub fn compose_maps(f: &BundleMap, g: &BundleMap) -> BundleMap {
    BundleMap { shift: f.shift.iter().map(|(x, a)| (*x, wrap(a + g.shift[x]))).collect() }
}

/// Mismatch between D(P)⊗D(Q) and D(P⊗Q) under the canonical comparison.
pub fn monoidal_check(p: &DescentBundle, q: &DescentBundle) -> f64 {
    let (dp, dq, dpq) = (descend(p), descend(q), descend(&p.tensor(q)));
    p.surj
        .total()
        .iter()
        .map(|x| angle_dist(dpq.psi[x] - dp.psi[x] - dq.psi[x]))
        .fold(0.0, f64::max)
}

/// Trivializations t with t(x2,x3) − t(x1,x3) + t(x1,x2) = c(x1,x2,x3).
/// Their difference is a descent datum; it is returned descended.
pub fn trivialization_difference(
    g: &FinGerbe,
    t1: &HashMap<[Point; 2], f64>,
    t2: &HashMap<[Point; 2], f64>,
) -> Result<Descended> {
    for t in [t1, t2] {
        let get = |a: Point, b: Point| t.get(&[a, b]).copied().unwrap_or(0.0);
        for q in g.surj.fiber_tuples(3) {
            let d = angle_dist(
                get(q[1], q[2]) - get(q[0], q[2]) + get(q[0], q[1]) - g.c(q[0], q[1], q[2]),
            );
            if d > gerbe::VALIDATION_TOL {
                return Err(DescentError::NotATrivialization(q, d));
            }
        }
    }
    let mut phi = HashMap::new();
    for q in g.surj.fiber_tuples(2) {
        let k = [q[0], q[1]];
        phi.insert(k, t1.get(&k).copied().unwrap_or(0.0) - t2.get(&k).copied().unwrap_or(0.0));
    }
    Ok(descend(&DescentBundle::new(g.surj.clone(), phi)?))
}

// ---- 2-descent ----

fn intersect(sets: &[&[Point]]) -> Vec<Point> {
    let mut out: Vec<Point> = sets[0].to_vec();
    for s in &sets[1..] {
        out.retain(|m| s.contains(m));
    }
    out
}

#[derive(Clone, Debug)]
pub struct TwoDescentData {
    pub base: Vec<Point>,
    pub cover: Vec<Vec<Point>>,
    pub gerbes: Vec<Arc<FinGerbe>>,
    /// φ_ij for i ≠ j with U_ij nonempty; φ_ii is the identity.
    pub phi: BTreeMap<(usize, usize), GerbeMorphism>,
    /// ψ̂_ijk on X_i over U_ijk; missing entries read as 0.
    pub psi: BTreeMap<(usize, usize, usize), BTreeMap<Point, f64>>,
}

impl TwoDescentData {
    pub fn n(&self) -> usize {
        self.cover.len()
    }

    pub fn overlap(&self, idx: &[usize]) -> Vec<Point> {
        let sets: Vec<&[Point]> = idx.iter().map(|&i| self.cover[i].as_slice()).collect();
        intersect(&sets)
    }

    pub fn phi_pt(&self, i: usize, j: usize, x: Point) -> Point {
        if i == j {
            x
        } else {
            self.phi[&(i, j)].map(x)
        }
    }

    pub fn lam(&self, i: usize, j: usize, x1: Point, x2: Point) -> f64 {
        if i == j {
            0.0
        } else {
            self.phi[&(i, j)].lambda(x1, x2)
        }
    }

    pub fn psi(&self, i: usize, j: usize, k: usize, x: Point) -> f64 {
        self.psi.get(&(i, j, k)).and_then(|m| m.get(&x)).copied().unwrap_or(0.0)
    }

    fn q(&self, k: usize) -> &FinGerbe {
        &self.gerbes[k]
    }

    /// Points of X_i over the given base points.
    fn points_over(&self, i: usize, over: &[Point]) -> Vec<Point> {
        over.iter().flat_map(|&m| self.gerbes[i].surj.fiber(m).to_vec()).collect()
    }

    /// Both sides of the ψ̂ 2-cocycle identity at x ∈ X_i, as phases in Q_l over
    /// (φ_kl φ_jk φ_ij x, φ_il x).
    pub fn cocycle_sides(&self, i: usize, j: usize, k: usize, l: usize, x: Point) -> (f64, f64) {
        let ql = self.q(l);
        let xij = self.phi_pt(i, j, x);
        let xijk = self.phi_pt(j, k, xij);
        let p0 = self.phi_pt(k, l, xijk);
        let xik = self.phi_pt(i, k, x);
        let p1 = self.phi_pt(k, l, xik);
        let p2 = self.phi_pt(i, l, x);
        let xjl = self.phi_pt(j, l, xij);
        // ψ̂_ikl(x) · φ̂_kl(ψ̂_ijk(x))
        let moved = self.psi(i, j, k, x) + self.lam(k, l, xijk, xik);
        let lhs = ql.mul(p0, p1, p2, self.psi(i, k, l, x), moved);
        // ψ̂_ijl(x) · ψ̂_jkl(φ_ij x)
        let rhs = ql.mul(p0, xjl, p2, self.psi(i, j, l, x), self.psi(j, k, l, xij));
        (lhs, rhs)
    }

    /// u_jk · u_ij = u_jk φ̂_jk(u_ij) ψ̂_ijk(x_i)⁻¹ for u_ij over (x_i,x_j),
    /// u_jk over (x_j,x_k); the result lies in Q_k over (φ_ik x_i, x_k).
    pub fn glued_mul(
        &self,
        (i, xi): (usize, Point),
        (j, xj): (usize, Point),
        (k, xk): (usize, Point),
        a_jk: f64,
        a_ij: f64,
    ) -> f64 {
        let qk = self.q(k);
        let xij = self.phi_pt(i, j, xi);
        let a = self.phi_pt(j, k, xij);
        let b = self.phi_pt(i, k, xi);
        let y = self.phi_pt(j, k, xj);
        let moved = a_ij + self.lam(j, k, xij, xj);
        let t2 = qk.mul(a, y, xk, a_jk, moved);
        let pinv = qk.inv(a, b, self.psi(i, j, k, xi));
        qk.mul(b, a, xk, t2, pinv)
    }
}

/// Memoized restrictions of a family of gerbes to subsets of the base.
#[derive(Default)]
struct Restrictions {
    cache: HashMap<(usize, Vec<Point>), Arc<FinGerbe>>,
}

impl Restrictions {
    fn get(&mut self, key: usize, g: &FinGerbe, over: &[Point]) -> gerbe::Result<Arc<FinGerbe>> {
        let k = (key, over.to_vec());
        if let Some(r) = self.cache.get(&k) {
            return Ok(r.clone());
        }
        let r = Arc::new(g.restrict(over)?);
        self.cache.insert(k, r.clone());
        Ok(r)
    }

    fn phi(&mut self, d: &TwoDescentData, i: usize, j: usize, over: &[Point]) -> gerbe::Result<GerbeMorphism> {
        let src = self.get(i, &d.gerbes[i], over)?;
        if i == j {
            return Ok(GerbeMorphism::identity(src));
        }
        let tgt = self.get(j, &d.gerbes[j], over)?;
        Ok(d.phi[&(i, j)].restrict_between(src, tgt))
    }
}

pub fn validate_2descent(d: &TwoDescentData, tol: f64) -> Report {
    let mut rep = Report::default();
    let n = d.n();
    // cover and gerbe bases
    let mut covered: Vec<Point> = d.cover.iter().flatten().copied().collect();
    covered.sort_unstable();
    covered.dedup();
    let mut base = d.base.clone();
    base.sort_unstable();
    let shape_ok = n == d.gerbes.len()
        && covered == base
        && d.cover.iter().zip(&d.gerbes).all(|(u, g)| {
            let mut u = u.clone();
            u.sort_unstable();
            u == g.surj.base()
        });
    rep.push_flag("cover", shape_ok, Some("cover does not match base or gerbe bases".into()));
    if !shape_ok {
        return rep;
    }
    // morphisms
    let mut w = Worst::default();
    let mut structural = None;
    for i in 0..n {
        for j in 0..n {
            let u = d.overlap(&[i, j]);
            if i == j || u.is_empty() {
                continue;
            }
            let Some(f) = d.phi.get(&(i, j)) else {
                structural = Some(format!("phi_{i}{j} missing"));
                continue;
            };
            let src_ok = d.gerbes[i].restrict(&u).map(|g| g == *f.source).unwrap_or(false);
            let tgt_ok = d.gerbes[j].restrict(&u).map(|g| g == *f.target).unwrap_or(false);
            if !(src_ok && tgt_ok) {
                structural = Some(format!("phi_{i}{j} has wrong source or target"));
                continue;
            }
            let (dd, t) = f.compatibility_defect();
            w.see(dd, || format!("phi_{i}{j} on {t:?}"));
        }
    }
    rep.push_flag("phi_structure", structural.is_none(), structural);
    rep.push("phi_morphisms", w.defect, tol, w.witness);
    if !rep.pass() {
        return rep;
    }
    // normalization
    let mut w = Worst::default();
    for i in 0..n {
        for k in 0..n {
            let u = d.overlap(&[i, k]);
            for x in d.points_over(i, &u) {
                w.see(angle_dist(d.psi(i, i, k, x)), || format!("psi_{i}{i}{k} at {x}"));
                w.see(angle_dist(d.psi(i, k, k, x)), || format!("psi_{i}{k}{k} at {x}"));
            }
        }
    }
    rep.push("psi_normalized", w.defect, tol, w.witness);
    // ψ̂_ijk descends to a section of D_{φ_jk∘φ_ij, φ_ik}
    let mut cache = Restrictions::default();
    let mut w = Worst::default();
    let mut err = None;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let u = d.overlap(&[i, j, k]);
                if u.is_empty() {
                    continue;
                }
                let mut built = || -> Result<(GerbeMorphism, GerbeMorphism)> {
                    let f = compose_morphisms(&cache.phi(d, i, j, &u)?, &cache.phi(d, j, k, &u)?)?;
                    Ok((f, cache.phi(d, i, k, &u)?))
                };
                let built = built();
                let (f, g) = match built {
                    Ok(v) => v,
                    Err(e) => {
                        err = Some(format!("({i},{j},{k}): {e}"));
                        continue;
                    }
                };
                for t in f.source.surj.fiber_tuples(2) {
                    let v = d.psi(i, j, k, t[0]);
                    let moved = phi_fg(&f, &g, t[0], t[1], v).unwrap();
                    let dd = angle_dist(moved - d.psi(i, j, k, t[1]));
                    w.see(dd, || format!("psi_{i}{j}{k} across ({},{})", t[0], t[1]));
                }
            }
        }
    }
    rep.push_flag("psi_structure", err.is_none(), err);
    rep.push("psi_descends", w.defect, tol, w.witness);
    // non-abelian 2-cocycle condition
    let mut w = Worst::default();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let u = d.overlap(&[i, j, k, l]);
                    for x in d.points_over(i, &u) {
                        let (a, b) = d.cocycle_sides(i, j, k, l, x);
                        w.see(angle_dist(a - b), || format!("quadruple ({i},{j},{k},{l}) at x={x}"));
                    }
                }
            }
        }
    }
    rep.push("two_cocycle", w.defect, tol, w.witness);
    rep
}

/// Output of gluing. Points of the glued X are numbered consecutively;
/// `origin[x] = (i, x_i)`.
#[derive(Clone, Debug)]
pub struct Glued {
    pub gerbe: Arc<FinGerbe>,
    pub origin: Vec<(usize, Point)>,
    pub chi: Vec<GerbeMorphism>,
    pub xi: BTreeMap<(usize, usize), Transformation>,
    /// Largest defect of ξ against ψ over triple overlaps.
    pub xi_psi_defect: f64,
}

pub fn glue_2descent(d: &TwoDescentData) -> Result<Glued> {
    let rep = validate_2descent(d, 1e-9);
    if !rep.pass() {
        let f = rep.failures().next().unwrap();
        return Err(DescentError::Invalid(format!(
            "{} ({})",
            f.name,
            f.witness.clone().unwrap_or_default()
        )));
    }
    let n = d.n();
    let mut origin = Vec::new();
    let mut proj = BTreeMap::new();
    for i in 0..n {
        for &x in d.gerbes[i].surj.total() {
            proj.insert(origin.len() as Point, d.gerbes[i].surj.proj(x).unwrap());
            origin.push((i, x));
        }
    }
    let surj = FinSurjection::new(proj, d.base.clone())?;
    let mut c = HashMap::new();
    for t in surj.fiber_tuples(3) {
        let [a, b, e] = [origin[t[0] as usize], origin[t[1] as usize], origin[t[2] as usize]];
        let v = d.glued_mul(a, b, e, 0.0, 0.0);
        if v != 0.0 {
            c.insert([t[0], t[1], t[2]], v);
        }
    }
    let glued = Arc::new(make_gerbe(surj, c)?);
    // χ_i: x_j ↦ φ_ji(x_j); u over (x_j,x_j') ↦ φ̂_j'i(u) ψ̂_jj'i(x_j)⁻¹
    let mut cache = Restrictions::default();
    const GLUED: usize = usize::MAX;
    let mut chi = Vec::with_capacity(n);
    for i in 0..n {
        let src = cache.get(GLUED, &glued, &d.cover[i])?;
        let qi = d.gerbes[i].clone();
        let mut f = BTreeMap::new();
        for &x in src.surj.total() {
            let (j, xj) = origin[x as usize];
            f.insert(x, d.phi_pt(j, i, xj));
        }
        let mut lambda = HashMap::new();
        for t in src.surj.fiber_tuples(2) {
            let ((j, xj), (jp, xjp)) = (origin[t[0] as usize], origin[t[1] as usize]);
            let a = d.phi_pt(jp, i, d.phi_pt(j, jp, xj));
            let b = d.phi_pt(j, i, xj);
            let cc = d.phi_pt(jp, i, xjp);
            let moved = d.lam(jp, i, d.phi_pt(j, jp, xj), xjp);
            let pinv = qi.inv(a, b, d.psi(j, jp, i, xj));
            lambda.insert([t[0], t[1]], qi.mul(b, a, cc, moved, pinv));
        }
        chi.push(make_morphism(src, qi.clone(), f, lambda)?);
    }
    // ξ_ij: φ_ij∘χ_i ⇒ χ_j with lift ξ̂_ij(x_l) = ψ̂_lij(x_l)
    let mut xi = BTreeMap::new();
    for i in 0..n {
        for j in 0..n {
            let u = d.overlap(&[i, j]);
            if u.is_empty() {
                continue;
            }
            let src = cache.get(GLUED, &glued, &u)?;
            let qi = cache.get(i, &d.gerbes[i], &u)?;
            let qj = cache.get(j, &d.gerbes[j], &u)?;
            let lhs = compose_morphisms(
                &chi[i].restrict_between(src.clone(), qi),
                &cache.phi(d, i, j, &u)?,
            )?;
            let rhs = chi[j].restrict_between(src, qj);
            let mut lift = BTreeMap::new();
            for &x in lhs.source.surj.total() {
                let (l, xl) = origin[x as usize];
                lift.insert(x, d.psi(l, i, j, xl));
            }
            xi.insert((i, j), descend_section(&lhs, &rhs, &lift, 1e-9)?);
        }
    }
    // compatibility: ξ_jk · φ_jk(ξ_ij) = ξ_ik · ψ_ijk(χ_i) over U_ijk
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let u = d.overlap(&[i, j, k]);
                for &m in &u {
                    for &x in glued.surj.fiber(m) {
                        let (l, xl) = origin[x as usize];
                        let qk = &d.gerbes[k];
                        let xli = d.phi_pt(l, i, xl);
                        let a0 = d.phi_pt(j, k, d.phi_pt(i, j, xli));
                        let lj = d.phi_pt(l, j, xl);
                        let lk = d.phi_pt(l, k, xl);
                        let moved = d.psi(l, i, j, xl) + d.lam(j, k, d.phi_pt(i, j, xli), lj);
                        let left = qk.mul(a0, d.phi_pt(j, k, lj), lk, d.psi(l, j, k, xl), moved);
                        let right =
                            qk.mul(a0, d.phi_pt(i, k, xli), lk, d.psi(l, i, k, xl), d.psi(i, j, k, xli));
                        worst = worst.max(angle_dist(left - right));
                    }
                }
            }
        }
    }
    Ok(Glued { gerbe: glued, origin, chi, xi, xi_psi_defect: worst })
}

// ---- fixtures ----

/// Restriction of one global gerbe to a cover, φ = identity, ψ = 0.
pub fn restricted_descent(g: &FinGerbe, cover: Vec<Vec<Point>>) -> Result<TwoDescentData> {
    let gerbes: Vec<Arc<FinGerbe>> =
        cover.iter().map(|u| g.restrict(u).map(Arc::new)).collect::<gerbe::Result<_>>()?;
    let mut phi = BTreeMap::new();
    for i in 0..cover.len() {
        for j in 0..cover.len() {
            let u = intersect(&[&cover[i], &cover[j]]);
            if i == j || u.is_empty() {
                continue;
            }
            let src = Arc::new(gerbes[i].restrict(&u)?);
            let tgt = Arc::new(gerbes[j].restrict(&u)?);
            let f = src.surj.total().iter().map(|&x| (x, x)).collect();
            phi.insert((i, j), make_morphism(src, tgt, f, HashMap::new())?);
        }
    }
    Ok(TwoDescentData { base: g.surj.base().to_vec(), cover, gerbes, phi, psi: BTreeMap::new() })
}

/// Coherent 2-descent data. Each Q_i is a pullback of a global gerbe G along a
/// surjection κ_i: X_i → X|U_i twisted by δν_i, with a section σ_i of κ_i;
/// φ_ij = σ_j∘κ_i. The ψ̂ that correct φ_ji∘φ_ij to the identity come from
/// κ_i, and the data are then gauge-twisted by random μ_ij and τ_ij.
pub fn random_descent<R: Rng>(rng: &mut R, base: usize, max_fiber: usize, cover_n: usize) -> TwoDescentData {
    let surj = gerbe::random_surjection(rng, base, max_fiber);
    let g = gerbe::random_gerbe(rng, surj);
    let base_pts: Vec<Point> = g.surj.base().to_vec();
    // cover: random nonempty subsets, then patch up the union
    let mut cover: Vec<Vec<Point>> = (0..cover_n)
        .map(|_| {
            let mut u: Vec<Point> = base_pts.iter().copied().filter(|_| rng.gen_bool(0.6)).collect();
            if u.is_empty() {
                u.push(base_pts[rng.gen_range(0..base_pts.len())]);
            }
            u
        })
        .collect();
    for &m in &base_pts {
        if !cover.iter().any(|u| u.contains(&m)) {
            let i = rng.gen_range(0..cover_n);
            cover[i].push(m);
            cover[i].sort_unstable();
        }
    }
    let n = cover.len();
    struct Local {
        kappa: BTreeMap<Point, Point>,
        sigma: BTreeMap<Point, Point>,
        nu: HashMap<[Point; 2], f64>,
    }
    let mut locals = Vec::new();
    let mut gerbes = Vec::new();
    let mut next: Point = 0;
    for u in &cover {
        let mut kappa = BTreeMap::new();
        let mut sigma = BTreeMap::new();
        let mut proj = BTreeMap::new();
        for &m in u {
            for &y in g.surj.fiber(m) {
                let copies = rng.gen_range(1..=2);
                for c in 0..copies {
                    kappa.insert(next, y);
                    proj.insert(next, m);
                    if c == 0 {
                        sigma.insert(y, next);
                    }
                    next += 1;
                }
            }
        }
        let surj = FinSurjection::new(proj, u.clone()).unwrap();
        let mut nu = HashMap::new();
        for t in surj.fiber_tuples(2) {
            if t[0] != t[1] {
                nu.insert([t[0], t[1]], rng.gen::<f64>());
            }
        }
        let nv = |a: Point, b: Point| nu.get(&[a, b]).copied().unwrap_or(0.0);
        let mut c = HashMap::new();
        for t in surj.fiber_tuples(3) {
            let v = g.c(kappa[&t[0]], kappa[&t[1]], kappa[&t[2]])
                + nv(t[1], t[2])
                - nv(t[0], t[2])
                + nv(t[0], t[1]);
            c.insert([t[0], t[1], t[2]], v);
        }
        gerbes.push(Arc::new(make_gerbe(surj, c).unwrap()));
        locals.push(Local { kappa, sigma, nu });
    }
    let nu = |i: usize, a: Point, b: Point| locals[i].nu.get(&[a, b]).copied().unwrap_or(0.0);
    // gauge phases
    let mut mu: BTreeMap<(usize, usize), BTreeMap<Point, f64>> = BTreeMap::new();
    let mut tau: BTreeMap<(usize, usize), BTreeMap<Point, f64>> = BTreeMap::new();
    for i in 0..n {
        for j in 0..n {
            let u = intersect(&[&cover[i], &cover[j]]);
            if i == j || u.is_empty() {
                continue;
            }
            let pts: Vec<Point> = u.iter().flat_map(|&m| gerbes[i].surj.fiber(m).to_vec()).collect();
            mu.insert((i, j), pts.iter().map(|&x| (x, rng.gen::<f64>())).collect());
            tau.insert((i, j), u.iter().map(|&m| (m, rng.gen::<f64>())).collect());
        }
    }
    let mu_at = |i: usize, j: usize, x: Point| mu.get(&(i, j)).map_or(0.0, |m| m[&x]);
    let tau_at = |i: usize, j: usize, m: Point| tau.get(&(i, j)).map_or(0.0, |t| t[&m]);
    let mut phi = BTreeMap::new();
    for i in 0..n {
        for j in 0..n {
            let u = intersect(&[&cover[i], &cover[j]]);
            if i == j || u.is_empty() {
                continue;
            }
            let src = Arc::new(gerbes[i].restrict(&u).unwrap());
            let tgt = Arc::new(gerbes[j].restrict(&u).unwrap());
            let map: BTreeMap<Point, Point> = src
                .surj
                .total()
                .iter()
                .map(|&x| (x, locals[j].sigma[&locals[i].kappa[&x]]))
                .collect();
            let mut lambda = HashMap::new();
            for t in src.surj.fiber_tuples(2) {
                let (a, b) = (t[0], t[1]);
                let v = nu(i, a, b) - nu(j, map[&a], map[&b]) + mu_at(i, j, b) - mu_at(i, j, a);
                lambda.insert([a, b], v);
            }
            phi.insert((i, j), make_morphism(src, tgt, map, lambda).unwrap());
        }
    }
    let pt = |i: usize, j: usize, x: Point| if i == j { x } else { phi[&(i, j)].map(x) };
    let mut psi = BTreeMap::new();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let u = intersect(&[&cover[i], &cover[j], &cover[k]]);
                if u.is_empty() {
                    continue;
                }
                let mut vals = BTreeMap::new();
                for &m in &u {
                    for &x in gerbes[i].surj.fiber(m) {
                        let mut v = 0.0;
                        if i == k && i != j {
                            // φ_ji∘φ_ij = σ_i κ_i ⇒ id, the element over (σκx, x) that κ̂ sends to 1
                            let l = &locals[i];
                            v -= nu(i, l.sigma[&l.kappa[&x]], x);
                        }
                        v += mu_at(i, k, x) - mu_at(i, j, x) - mu_at(j, k, pt(i, j, x));
                        v += tau_at(j, k, m) - tau_at(i, k, m) + tau_at(i, j, m);
                        vals.insert(x, wrap(v));
                    }
                }
                psi.insert((i, j, k), vals);
            }
        }
    }
    TwoDescentData { base: base_pts, cover, gerbes, phi, psi }
}

// ---- JSON ----

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TwoDescentJson {
    pub base: Vec<Point>,
    pub cover: Vec<Vec<Point>>,
    pub gerbes: Vec<GerbeJson>,
    /// "i,j" → morphism
    #[serde(default)]
    pub phi: BTreeMap<String, MorphismJson>,
    /// "i,j,k" → {"x": angle}
    #[serde(default)]
    pub psi: BTreeMap<String, BTreeMap<String, f64>>,
}

impl TwoDescentJson {
    pub fn from_data(d: &TwoDescentData) -> Self {
        TwoDescentJson {
            base: d.base.clone(),
            cover: d.cover.clone(),
            gerbes: d.gerbes.iter().map(|g| GerbeJson::from_gerbe(g)).collect(),
            phi: d
                .phi
                .iter()
                .map(|(&(i, j), f)| (format!("{i},{j}"), MorphismJson::from_morphism(f)))
                .collect(),
            psi: d
                .psi
                .iter()
                .map(|(&(i, j, k), v)| {
                    (format!("{i},{j},{k}"), v.iter().map(|(x, a)| (x.to_string(), *a)).collect())
                })
                .collect(),
        }
    }

    pub fn build(&self) -> Result<TwoDescentData> {
        let gerbes: Vec<Arc<FinGerbe>> =
            self.gerbes.iter().map(|g| g.build().map(Arc::new)).collect::<gerbe::Result<_>>()?;
        let n = gerbes.len();
        if self.cover.len() != n {
            return Err(DescentError::Invalid("cover and gerbes differ in length".into()));
        }
        let idx = |s: &str, len: usize| -> Result<Vec<usize>> {
            let v = parse_face_key(s)
                .filter(|v| v.len() == len && v.iter().all(|&i| (i as usize) < n))
                .ok_or_else(|| DescentError::Invalid(format!("bad index key {s:?}")))?;
            Ok(v.into_iter().map(|i| i as usize).collect())
        };
        let mut phi = BTreeMap::new();
        for (k, mj) in &self.phi {
            let v = idx(k, 2)?;
            let u = intersect(&[&self.cover[v[0]], &self.cover[v[1]]]);
            let src = Arc::new(gerbes[v[0]].restrict(&u)?);
            let tgt = Arc::new(gerbes[v[1]].restrict(&u)?);
            phi.insert((v[0], v[1]), mj.build(src, tgt)?);
        }
        let mut psi = BTreeMap::new();
        for (k, vals) in &self.psi {
            let v = idx(k, 3)?;
            let mut m = BTreeMap::new();
            for (x, a) in vals {
                let x = parse_face_key(x)
                    .filter(|p| p.len() == 1)
                    .ok_or_else(|| DescentError::Invalid(format!("bad point {x:?}")))?[0];
                m.insert(x, *a);
            }
            psi.insert((v[0], v[1], v[2]), m);
        }
        Ok(TwoDescentData { base: self.base.clone(), cover: self.cover.clone(), gerbes, phi, psi })
    }
}

pub fn psi_key(i: usize, j: usize, k: usize) -> String {
    face_key(&[i as Point, j as Point, k as Point])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn descend_zero_and_coboundary() {
        let s = FinSurjection::from_sizes(&[3, 2, 1]).unwrap();
        let d = descend(&DescentBundle::trivial(s.clone()));
        assert!(d.psi.values().all(|&v| v == 0.0));
        let mut r = rng(1);
        let b: BTreeMap<Point, f64> = s.total().iter().map(|&x| (x, r.gen())).collect();
        let bundle = DescentBundle::coboundary(s.clone(), &b);
        let d = descend(&bundle);
        for &x in s.total() {
            let sx = s.section(s.proj(x).unwrap());
            assert!(angle_dist(d.psi[&x] - (b[&x] - b[&sx])) < 1e-12);
        }
        for t in s.fiber_tuples(2) {
            assert!(angle_dist(d.psi[&t[1]] - d.psi[&t[0]] - bundle.phi(t[0], t[1])) < 1e-12);
        }
    }

    #[test]
    fn broken_descent_cocycle() {
        let s = FinSurjection::from_sizes(&[3]).unwrap();
        let b: BTreeMap<Point, f64> = [(0, 0.1), (1, 0.2), (2, 0.7)].into_iter().collect();
        let mut phi = DescentBundle::coboundary(s.clone(), &b).phi;
        *phi.get_mut(&[0, 2]).unwrap() += 0.1;
        assert!(matches!(DescentBundle::new(s, phi), Err(DescentError::CocycleFails(_, _))));
    }

    #[test]
    fn descend_map_functorial() {
        let s = FinSurjection::from_sizes(&[2, 3]).unwrap();
        let mut r = rng(2);
        let bundles: Vec<DescentBundle> = (0..3)
            .map(|_| {
                let b: BTreeMap<Point, f64> = s.total().iter().map(|&x| (x, r.gen())).collect();
                DescentBundle::coboundary(s.clone(), &b)
            })
            .collect();
        // a compatible map P → Q: shift(x2) − shift(x1) = psi − phi, plus a base constant
        let map_between = |p: &DescentBundle, q: &DescentBundle, r: &mut ChaCha8Rng| {
            let mut shift = BTreeMap::new();
            for &m in s.base() {
                let c: f64 = r.gen();
                let sx = s.section(m);
                for &x in s.fiber(m) {
                    shift.insert(x, wrap(c + q.phi(sx, x) - p.phi(sx, x)));
                }
            }
            BundleMap { shift }
        };
        let f = map_between(&bundles[0], &bundles[1], &mut r);
        let g = map_between(&bundles[1], &bundles[2], &mut r);
        let df = descend_map(&bundles[0], &bundles[1], &f).unwrap();
        let dg = descend_map(&bundles[1], &bundles[2], &g).unwrap();
        let dgf = descend_map(&bundles[0], &bundles[2], &compose_maps(&f, &g)).unwrap();
        for m in s.base() {
            assert!(angle_dist(dgf[m] - df[m] - dg[m]) < 1e-12);
        }
        let id = BundleMap { shift: s.total().iter().map(|&x| (x, 0.0)).collect() };
        assert!(descend_map(&bundles[0], &bundles[0], &id).unwrap().values().all(|&v| v == 0.0));
        let mut bad = f.clone();
        *bad.shift.get_mut(&3).unwrap() += 0.25;
        assert!(matches!(
            descend_map(&bundles[0], &bundles[1], &bad),
            Err(DescentError::NotCompatible(_, _, _))
        ));
    }

    #[test]
    fn monoidal() {
        let s = FinSurjection::from_sizes(&[3, 3]).unwrap();
        assert_eq!(monoidal_check(&DescentBundle::trivial(s.clone()), &DescentBundle::trivial(s.clone())), 0.0);
        let mut r = rng(3);
        for _ in 0..20 {
            let b1: BTreeMap<Point, f64> = s.total().iter().map(|&x| (x, r.gen())).collect();
            let b2: BTreeMap<Point, f64> = s.total().iter().map(|&x| (x, r.gen())).collect();
            let p = DescentBundle::coboundary(s.clone(), &b1);
            let q = DescentBundle::coboundary(s.clone(), &b2);
            assert!(monoidal_check(&p, &q) <= 1e-12);
        }
    }

    #[test]
    fn trivialization_differences() {
        let mut r = rng(4);
        let g = gerbe::random_gerbe(&mut r, FinSurjection::from_sizes(&[3, 2]).unwrap());
        let mut t1 = HashMap::new();
        for t in g.surj.fiber_tuples(2) {
            t1.insert([t[0], t[1]], g.potential(t[0], t[1]));
        }
        let same = trivialization_difference(&g, &t1, &t1).unwrap();
        assert!(same.psi.values().all(|&v| angle_dist(v) < 1e-12));
        let e: BTreeMap<Point, f64> = g.surj.total().iter().map(|&x| (x, r.gen())).collect();
        let mut t2 = t1.clone();
        for (k, v) in t2.iter_mut() {
            *v += e[&k[1]] - e[&k[0]];
        }
        let d = trivialization_difference(&g, &t1, &t2).unwrap();
        // recovers −e up to its value at the section of each fiber
        for &x in g.surj.total() {
            let s = g.surj.section(g.surj.proj(x).unwrap());
            assert!(angle_dist(d.psi[&x] + e[&x] - e[&s]) < 1e-12);
        }
        let mut bad = t1.clone();
        *bad.get_mut(&[0, 1]).unwrap() += 0.1;
        assert!(matches!(
            trivialization_difference(&g, &t1, &bad),
            Err(DescentError::NotATrivialization(_, _))
        ));
    }

    #[test]
    fn restricted_global_gerbe_glues_back() {
        let mut r = rng(5);
        let g = gerbe::random_gerbe(&mut r, FinSurjection::from_sizes(&[2, 3, 1, 2]).unwrap());
        let cover = vec![vec![0, 1], vec![1, 2, 3], vec![0, 3]];
        let d = restricted_descent(&g, cover).unwrap();
        assert!(validate_2descent(&d, 1e-12).pass());
        let glued = glue_2descent(&d).unwrap();
        // glued gerbe restricted to one copy per point is the original
        let mut first: BTreeMap<Point, Point> = BTreeMap::new();
        for (gx, &(_, x)) in glued.origin.iter().enumerate() {
            first.entry(x).or_insert(gx as Point);
        }
        for t in g.surj.fiber_tuples(3) {
            let c = glued.gerbe.c(first[&t[0]], first[&t[1]], first[&t[2]]);
            assert!(angle_dist(c - g.c(t[0], t[1], t[2])) < 1e-12);
        }
        // χ composite: G → glued (first copy) → Q_i agrees with restriction
        for (i, chi) in glued.chi.iter().enumerate() {
            for t in d.gerbes[i].surj.fiber_tuples(2) {
                let (a, b) = (first[&t[0]], first[&t[1]]);
                assert_eq!(chi.map(a), t[0]);
                assert!(angle_dist(chi.lambda(a, b)) < 1e-12);
            }
        }
        assert!(glued.xi_psi_defect < 1e-12);
    }

    #[test]
    fn one_set_cover_is_identity() {
        let mut r = rng(6);
        let g = gerbe::random_gerbe(&mut r, FinSurjection::from_sizes(&[3, 2]).unwrap());
        let d = restricted_descent(&g, vec![vec![0, 1]]).unwrap();
        let glued = glue_2descent(&d).unwrap();
        assert_eq!(glued.origin.len(), g.surj.total().len());
        for t in g.surj.fiber_tuples(3) {
            assert!(angle_dist(glued.gerbe.c(t[0], t[1], t[2]) - g.c(t[0], t[1], t[2])) < 1e-12);
        }
        let chi = &glued.chi[0];
        for t in g.surj.fiber_tuples(2) {
            assert_eq!(chi.map(t[0]), t[0]);
            assert!(angle_dist(chi.lambda(t[0], t[1])) < 1e-12);
        }
    }

    #[test]
    fn broken_psi_is_located() {
        let mut r = rng(7);
        let mut d = random_descent(&mut r, 3, 3, 3);
        assert!(validate_2descent(&d, 1e-9).pass());
        let key = *d.psi.keys().find(|k| k.0 != k.1 && k.1 != k.2).unwrap();
        let vals = d.psi.get_mut(&key).unwrap();
        let x = *vals.keys().next().unwrap();
        *vals.get_mut(&x).unwrap() += 0.3;
        let rep = validate_2descent(&d, 1e-9);
        assert!(!rep.pass());
        let f = rep.failures().next().unwrap();
        assert!(f.witness.is_some());
        assert!(glue_2descent(&d).is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut r = rng(8);
        let d = random_descent(&mut r, 3, 2, 2);
        let s = serde_json::to_string(&TwoDescentJson::from_data(&d)).unwrap();
        let back: TwoDescentJson = serde_json::from_str(&s).unwrap();
        let d2 = back.build().unwrap();
        assert!(validate_2descent(&d2, 1e-9).pass());
        assert_eq!(d2.psi, d.psi);
    }

    proptest! {
        #[test]
        fn random_descent_glues(seed in any::<u64>()) {
            let mut r = rng(seed);
            let d = random_descent(&mut r, 4, 3, 3);
            let rep = validate_2descent(&d, 1e-9);
            prop_assert!(rep.pass(), "{:?}", rep);
            let glued = glue_2descent(&d).unwrap();
            prop_assert!(glued.gerbe.associativity_defect().0 <= 1e-12);
            prop_assert!(glued.xi_psi_defect <= 1e-12);
        }

        #[test]
        fn tau_twist_keeps_validity(seed in any::<u64>()) {
            let mut r = rng(seed);
            let surj = gerbe::random_surjection(&mut r, 3, 3);
            let g = gerbe::random_gerbe(&mut r, surj);
            let mut d = restricted_descent(&g, vec![vec![0, 1], vec![1, 2], vec![0, 2]]).unwrap();
            let n = d.n();
            let mut tau = BTreeMap::new();
            for i in 0..n { for j in 0..n { for m in 0..3 {
                tau.insert((i, j, m), if i == j { 0.0 } else { r.gen::<f64>() });
            }}}
            for i in 0..n { for j in 0..n { for k in 0..n {
                let u = d.overlap(&[i, j, k]);
                let mut vals = BTreeMap::new();
                for &m in &u {
                    for &x in d.gerbes[i].surj.fiber(m) {
                        vals.insert(x, wrap(tau[&(j, k, m)] - tau[&(i, k, m)] + tau[&(i, j, m)]));
                    }
                }
                if !vals.is_empty() { d.psi.insert((i, j, k), vals); }
            }}}
            prop_assert!(validate_2descent(&d, 1e-9).pass());
            prop_assert!(glue_2descent(&d).is_ok());
        }
    }
}
