//! Finite bundle 2-gerbes (Q, Y, X, M).
//!
//! Q is a finite gerbe over Y → X^{[2]}, where the base points of Q are the
//! indices of the fiberwise X-pairs. A point y over (x1,x2) is a 1-cell
//! x1 → x2; `m(y23, y12)` lies over (x1,x3). The morphism m̂ sends
//! u23 ⊗ u12 to u23 + u12 + λ((y23,y12),(y23',y12')), and
//! â(y34,y23,y12) ∈ Q over (m(m(y34,y23),y12), m(y34,m(y23,y12))).

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bicat::{Bicat, Cell1};
use crate::cech::{self, angle_dist, delta, face_key, parse_face_key, wrap, CechError, Cochain, Complex};
use crate::gerbe::{self, make_gerbe, FinGerbe, FinSurjection, GerbeError, Point, SurjectionJson};
use crate::report::{Report, Worst};

#[derive(Debug, Error)]
pub enum TwoGerbeError {
    #[error("invalid 2-gerbe data: {0}")]
    Invalid(String),
    #[error("2-gerbe fails validation: {0}")]
    NotValid(String),
    #[error(transparent)]
    Gerbe(#[from] GerbeError),
    #[error(transparent)]
    Cech(#[from] CechError),
}

pub type Result<T> = std::result::Result<T, TwoGerbeError>;

/// Signs of the five face terms d0…d4 in the coherence condition.
pub const COHERENCE_SIGNS: [i8; 5] = [1, -1, 1, -1, 1];

#[derive(Clone, Debug)]
pub struct Fin2Gerbe {
    pub surj_x: FinSurjection,
    pairs: Vec<(Point, Point)>,
    pair_index: HashMap<(Point, Point), Point>,
    pub q: Arc<FinGerbe>,
    pub m: HashMap<[Point; 2], Point>,
    pub m_hat: HashMap<[Point; 4], f64>,
    pub a_hat: HashMap<[Point; 3], f64>,
}

fn enumerate_pairs(surj_x: &FinSurjection) -> (Vec<(Point, Point)>, HashMap<(Point, Point), Point>) {
    let pairs: Vec<(Point, Point)> = surj_x.fiber_tuples(2).into_iter().map(|t| (t[0], t[1])).collect();
    let index = pairs.iter().enumerate().map(|(i, &p)| (p, i as Point)).collect();
    (pairs, index)
}

impl Fin2Gerbe {
    /// `y_over` sends each Y point to its X-pair; `c` is the cocycle of Q.
    pub fn new(
        surj_x: FinSurjection,
        y_over: &BTreeMap<Point, (Point, Point)>,
        c: HashMap<[Point; 3], f64>,
        m: HashMap<[Point; 2], Point>,
        m_hat: HashMap<[Point; 4], f64>,
        a_hat: HashMap<[Point; 3], f64>,
    ) -> Result<Self> {
        let (pairs, pair_index) = enumerate_pairs(&surj_x);
        let mut proj = BTreeMap::new();
        for (&y, p) in y_over {
            let i = pair_index
                .get(p)
                .ok_or_else(|| TwoGerbeError::Invalid(format!("{y} lies over {p:?}, not a fiber pair")))?;
            proj.insert(y, *i);
        }
        let ysurj = FinSurjection::new(proj, (0..pairs.len() as Point).collect())?;
        let q = Arc::new(make_gerbe(ysurj, c)?);
        Ok(Fin2Gerbe { surj_x, pairs, pair_index, q, m, m_hat, a_hat })
    }

    pub fn pair_of(&self, y: Point) -> (Point, Point) {
        self.pairs[self.q.surj.proj(y).expect("point of Y") as usize]
    }

    pub fn ys_over(&self, x1: Point, x2: Point) -> &[Point] {
        self.q.surj.fiber(self.pair_index[&(x1, x2)])
    }

    pub fn y_points(&self) -> &[Point] {
        self.q.surj.total()
    }

    /// m(g, f) for f over (x1,x2), g over (x2,x3).
    pub fn mul_y(&self, g: Point, f: Point) -> Point {
        self.m[&[g, f]]
    }

    pub fn lam(&self, g: Point, f: Point, g2: Point, f2: Point) -> f64 {
        self.m_hat.get(&[g, f, g2, f2]).copied().unwrap_or(0.0)
    }

    pub fn ahat(&self, h: Point, g: Point, f: Point) -> f64 {
        self.a_hat.get(&[h, g, f]).copied().unwrap_or(0.0)
    }

    fn id2(&self, y: Point) -> f64 {
        wrap(-self.q.c(y, y, y))
    }

    /// Composable pairs (g, f) over the X-triple (x1,x2,x3).
    pub fn composable_over(&self, x: [Point; 3]) -> Vec<[Point; 2]> {
        let mut out = vec![];
        for &g in self.ys_over(x[1], x[2]) {
            for &f in self.ys_over(x[0], x[1]) {
                out.push([g, f]);
            }
        }
        out
    }

    pub fn composable3_over(&self, x: [Point; 4]) -> Vec<[Point; 3]> {
        let mut out = vec![];
        for &h in self.ys_over(x[2], x[3]) {
            for [g, f] in self.composable_over([x[0], x[1], x[2]]) {
                out.push([h, g, f]);
            }
        }
        out
    }

    fn m1(&self, [h, g, f]: [Point; 3]) -> Point {
        self.mul_y(self.mul_y(h, g), f)
    }

    fn m2(&self, [h, g, f]: [Point; 3]) -> Point {
        self.mul_y(h, self.mul_y(g, f))
    }

    fn m1_hat(&self, w: [Point; 3], v: [Point; 3]) -> f64 {
        self.lam(w[0], w[1], v[0], v[1]) + self.lam(self.mul_y(w[0], w[1]), w[2], self.mul_y(v[0], v[1]), v[2])
    }

    fn m2_hat(&self, w: [Point; 3], v: [Point; 3]) -> f64 {
        self.lam(w[1], w[2], v[1], v[2]) + self.lam(w[0], self.mul_y(w[1], w[2]), v[0], self.mul_y(v[1], v[2]))
    }

    /// The five face terms d0…d4 at a composable Y-quadruple (g4,g3,g2,g1)
    /// and the phase of the canonical trivialization of δ(A).
    pub fn coherence_terms(&self, g4: Point, g3: Point, g2: Point, g1: Point) -> ([f64; 5], f64) {
        let m = |a, b| self.mul_y(a, b);
        let (g43, g32, g21) = (m(g4, g3), m(g3, g2), m(g2, g1));
        let p = m(g43, g2);
        let p2 = m(g4, g32);
        let r = m(g32, g1);
        let r2 = m(g3, g21);
        let m1 = m(p, g1);
        let m2 = m(p2, g1);
        let m3 = m(g4, r);
        let m4 = m(g4, r2);
        let m5 = m(g43, g21);
        let a1 = self.ahat(g4, g3, g2) + self.id2(g1) + self.lam(p, g1, p2, g1);
        let a2 = self.ahat(g4, g32, g1);
        let a3 = self.id2(g4) + self.ahat(g3, g2, g1) + self.lam(g4, r, g4, r2);
        let b1 = self.ahat(g43, g2, g1);
        let b2 = self.ahat(g4, g3, g21);
        let c = &self.q;
        let kappa = c.c(m1, m2, m3) + c.c(m1, m3, m4) - c.c(m1, m5, m4);
        ([a1, b2, a2, b1, a3], kappa)
    }

    /// Copy with â shifted by a function of the underlying X-quadruple.
    pub fn twisted_by(&self, alpha: impl Fn([Point; 4]) -> f64) -> Fin2Gerbe {
        let mut out = self.clone();
        for t in self.surj_x.fiber_tuples(4) {
            let x = [t[0], t[1], t[2], t[3]];
            let v = alpha(x);
            for w in self.composable3_over(x) {
                let e = out.a_hat.entry(w).or_insert(0.0);
                *e = wrap(*e + v);
            }
        }
        out
    }
}

fn xs<const N: usize>(t: &[Point]) -> [Point; N] {
    t.try_into().expect("tuple length")
}

/// Coherence defect with arbitrary signs on the five face terms.
pub fn coherence_defect_with_signs(g: &Fin2Gerbe, signs: [i8; 5]) -> (f64, Option<String>) {
    let quints = g.surj_x.fiber_tuples(5);
    let per: Vec<(f64, Option<String>)> = quints
        .par_iter()
        .map(|t| {
            let mut w = Worst::default();
            let x: [Point; 5] = xs(t);
            for &g4 in g.ys_over(x[3], x[4]) {
                for [g3, g2, g1] in g.composable3_over([x[0], x[1], x[2], x[3]]) {
                    let (terms, kappa) = g.coherence_terms(g4, g3, g2, g1);
                    let s: f64 = terms.iter().zip(signs).map(|(t, s)| s as f64 * t).sum::<f64>() + kappa;
                    w.see(angle_dist(s), || {
                        format!("X-quintuple {x:?}, Y-cells (y45,y34,y23,y12) = ({g4},{g3},{g2},{g1})")
                    });
                }
            }
            (w.defect, w.witness)
        })
        .collect();
    let mut w = Worst::default();
    for (d, wit) in per {
        w.see(d, || wit.unwrap_or_default());
    }
    (w.defect, w.witness)
}

pub fn validate_2gerbe(g: &Fin2Gerbe, tol: f64) -> Report {
    let mut rep = Report::default();
    let (d, q) = g.q.associativity_defect();
    rep.push("q_gerbe", d, tol, q.map(|q| format!("Y-quadruple {q:?}")));

    // m total and over d_1
    let mut bad = None;
    'outer: for t in g.surj_x.fiber_tuples(3) {
        let x: [Point; 3] = xs(&t);
        for [h, f] in g.composable_over(x) {
            match g.m.get(&[h, f]) {
                Some(&y) if g.q.surj.proj(y).is_some() && g.pair_of(y) == (x[0], x[2]) => {}
                _ => {
                    bad = Some(format!("m({h},{f}) over X-triple {x:?}"));
                    break 'outer;
                }
            }
        }
    }
    rep.push_flag("m_total", bad.is_none(), bad.clone());
    if bad.is_some() {
        return rep;
    }

    // m̂ is a morphism: m̂(v)∘m̂(u) = m̂(v∘u)
    let mut w = Worst::default();
    for t in g.surj_x.fiber_tuples(3) {
        let x: [Point; 3] = xs(&t);
        let ws = g.composable_over(x);
        for a in &ws {
            for b in &ws {
                for c in &ws {
                    let (ma, mb, mc) = (g.mul_y(a[0], a[1]), g.mul_y(b[0], b[1]), g.mul_y(c[0], c[1]));
                    let lhs = g.q.mul(ma, mb, mc, g.lam(b[0], b[1], c[0], c[1]), g.lam(a[0], a[1], b[0], b[1]));
                    let cqq = g.q.c(a[0], b[0], c[0]) + g.q.c(a[1], b[1], c[1]);
                    let rhs = cqq + g.lam(a[0], a[1], c[0], c[1]);
                    w.see(angle_dist(lhs - rhs), || format!("composable pairs {a:?}, {b:?}, {c:?}"));
                }
            }
        }
    }
    rep.push("m_hat_morphism", w.defect, tol, w.witness);

    // â descends: â(v)∘m̂1 = m̂2∘â(w)
    let mut w = Worst::default();
    for t in g.surj_x.fiber_tuples(4) {
        let x: [Point; 4] = xs(&t);
        let ws = g.composable3_over(x);
        for &a in &ws {
            for &b in &ws {
                let (m1a, m1b, m2a, m2b) = (g.m1(a), g.m1(b), g.m2(a), g.m2(b));
                let lhs = g.q.mul(m1a, m1b, m2b, g.ahat(b[0], b[1], b[2]), g.m1_hat(a, b));
                let rhs = g.q.mul(m1a, m2a, m2b, g.m2_hat(a, b), g.ahat(a[0], a[1], a[2]));
                w.see(angle_dist(lhs - rhs), || format!("X-quadruple {x:?}, Y-triples {a:?} and {b:?}"));
            }
        }
    }
    rep.push("a_descends", w.defect, tol, w.witness);

    let (d, wit) = coherence_defect_with_signs(g, COHERENCE_SIGNS);
    rep.push("coherence", d, tol, wit);
    rep
}

// ---- restriction to a point ----

/// The bigroupoid over m: objects X_m, 1-cells Y, 2-cells Q. Identities are
/// the smallest Y point over (x,x), with L and R synthesized.
pub fn restrict_to_point(g: &Fin2Gerbe, m: Point) -> Result<Bicat> {
    let xm = g.surj_x.fiber(m).to_vec();
    if xm.is_empty() {
        return Err(TwoGerbeError::Invalid(format!("{m} is not in the base")));
    }
    let obj = |x: Point| xm.iter().position(|&p| p == x).unwrap();
    let mut cells = vec![];
    let mut class = vec![];
    let mut index = HashMap::new();
    for &x1 in &xm {
        for &x2 in &xm {
            for &y in g.ys_over(x1, x2) {
                index.insert(y, cells.len());
                cells.push(Cell1 { src: obj(x1), tgt: obj(x2), label: format!("y{y}") });
                class.push(g.pair_index[&(x1, x2)] as usize);
            }
        }
    }
    let ys: Vec<Point> = {
        let mut v: Vec<(usize, Point)> = index.iter().map(|(&y, &i)| (i, y)).collect();
        v.sort_unstable();
        v.into_iter().map(|(_, y)| y).collect()
    };
    let mut b = Bicat {
        objects: xm.iter().map(|x| format!("x{x}")).collect(),
        cells,
        class,
        unit: xm.iter().map(|&x| index[&g.ys_over(x, x)[0]]).collect(),
        ..Default::default()
    };
    for (i, &y1) in ys.iter().enumerate() {
        for (j, &y2) in ys.iter().enumerate() {
            if !b.hom(i, j) {
                continue;
            }
            for (k, &y3) in ys.iter().enumerate() {
                if b.hom(j, k) {
                    let v = g.q.c(y1, y2, y3);
                    if v != 0.0 {
                        b.vert.insert([i, j, k], v);
                    }
                }
            }
        }
    }
    for (fi, &f) in ys.iter().enumerate() {
        for (gi, &gy) in ys.iter().enumerate() {
            if b.cells[fi].tgt != b.cells[gi].src {
                continue;
            }
            b.comp.insert([gi, fi], index[&g.mul_y(gy, f)]);
            for f2 in b.parallel(fi) {
                for g2 in b.parallel(gi) {
                    let v = g.lam(gy, f, ys[g2], ys[f2]);
                    if v != 0.0 {
                        b.horiz.insert([gi, g2, fi, f2], v);
                    }
                }
            }
            for (hi, &h) in ys.iter().enumerate() {
                if b.cells[hi].src == b.cells[gi].tgt {
                    let v = g.ahat(h, gy, f);
                    if v != 0.0 {
                        b.assoc.insert([hi, gi, fi], v);
                    }
                }
            }
        }
    }
    b.synthesize_units();
    Ok(b)
}

// ---- Čech 3-cocycle ----

/// Choices for the extraction: s_i(m) ∈ X_m, σ_ij(m) over (s_i m, s_j m) and
/// ρ_ijk(m) ∈ Q over (σ_ik, σ_jk∘σ_ij), for i < j < k with m in every U.
#[derive(Clone, Debug, Default)]
pub struct SectionChoice {
    pub s: BTreeMap<(usize, Point), Point>,
    pub sigma: BTreeMap<(usize, usize, Point), Point>,
    pub rho: BTreeMap<(usize, usize, usize, Point), f64>,
}

fn members(cover: &[Vec<Point>], m: Point) -> Vec<usize> {
    (0..cover.len()).filter(|&i| cover[i].contains(&m)).collect()
}

impl SectionChoice {
    fn build(g: &Fin2Gerbe, cover: &[Vec<Point>], mut pick: impl FnMut(&[Point]) -> usize, mut phase: impl FnMut() -> f64) -> Self {
        let mut ch = SectionChoice::default();
        for &m in g.surj_x.base() {
            let idx = members(cover, m);
            for &i in &idx {
                let f = g.surj_x.fiber(m);
                ch.s.insert((i, m), f[pick(f)]);
            }
            for (a, &i) in idx.iter().enumerate() {
                for &j in &idx[a + 1..] {
                    let ys = g.ys_over(ch.s[&(i, m)], ch.s[&(j, m)]);
                    ch.sigma.insert((i, j, m), ys[pick(ys)]);
                }
            }
            for (a, &i) in idx.iter().enumerate() {
                for (b, &j) in idx.iter().enumerate().skip(a + 1) {
                    for &k in &idx[b + 1..] {
                        ch.rho.insert((i, j, k, m), phase());
                    }
                }
            }
        }
        ch
    }

    /// Smallest ids and ρ = 0.
    pub fn canonical(g: &Fin2Gerbe, cover: &[Vec<Point>]) -> Self {
        Self::build(g, cover, |_| 0, || 0.0)
    }

    pub fn random<R: Rng>(rng: &mut R, g: &Fin2Gerbe, cover: &[Vec<Point>]) -> Self {
        let rng = std::cell::RefCell::new(rng);
        Self::build(g, cover, |v| rng.borrow_mut().gen_range(0..v.len()), || rng.borrow_mut().gen())
    }
}

/// ε on the Čech complex of a cover of a finite base: one simplex per base
/// point m on the indices of the sets containing m. Vertex (m,i) has id
/// pos(m)·n + i.
#[derive(Clone, Debug)]
pub struct Extraction {
    pub nerve: Arc<Complex>,
    pub epsilon: Cochain,
    pub delta_defect: f64,
}

pub fn cech_complex(base: &[Point], cover: &[Vec<Point>]) -> Result<Complex> {
    let n = cover.len() as u32;
    let mut maximal = vec![];
    for (p, &m) in base.iter().enumerate() {
        let idx = members(cover, m);
        if idx.is_empty() {
            return Err(TwoGerbeError::Invalid(format!("{m} is not covered")));
        }
        maximal.push(idx.iter().map(|&i| p as u32 * n + i as u32).collect::<Vec<_>>());
    }
    let verts = maximal.iter().flatten().copied().collect();
    Ok(Complex::new(verts, &maximal)?)
}

/// ε_ijkl(m) compares the ρ-chains from σ_il to m1(σ_kl,σ_jk,σ_ij) through
/// σ_jl∘σ_ij and, via â⁻¹, through σ_kl∘σ_ik.
pub fn epsilon_at(g: &Fin2Gerbe, ch: &SectionChoice, [i, j, k, l]: [usize; 4], m: Point) -> f64 {
    let sg = |a, b| ch.sigma[&(a, b, m)];
    let rho = |a, b, c| ch.rho[&(a, b, c, m)];
    let (sij, sjk, skl, sik, sjl, sil) = (sg(i, j), sg(j, k), sg(k, l), sg(i, k), sg(j, l), sg(i, l));
    let mu = |a, b| g.mul_y(a, b);
    let w = [skl, sjk, sij];
    let (m1w, m2w) = (g.m1(w), g.m2(w));
    let q = &g.q;
    let skl_sjk = mu(skl, sjk);
    let sjl_sij = mu(sjl, sij);
    let whisk_r = rho(j, k, l) + g.id2(sij) + g.lam(sjl, sij, skl_sjk, sij);
    let chain_a = q.mul(sil, sjl_sij, m1w, whisk_r, rho(i, j, l));
    let skl_sik = mu(skl, sik);
    let whisk_l = g.id2(skl) + rho(i, j, k) + g.lam(skl, sik, skl, mu(sjk, sij));
    let p = q.mul(sil, skl_sik, m2w, whisk_l, rho(i, k, l));
    let ainv = q.inv(m1w, m2w, g.ahat(skl, sjk, sij));
    let chain_b = q.mul(sil, m2w, m1w, ainv, p);
    wrap(chain_a - chain_b)
}

pub fn extract_3cocycle(g: &Fin2Gerbe, cover: &[Vec<Point>], ch: &SectionChoice) -> Result<Extraction> {
    let rep = validate_2gerbe(g, gerbe::VALIDATION_TOL);
    if let Some(f) = rep.failures().next() {
        return Err(TwoGerbeError::NotValid(format!("{} ({})", f.name, f.witness.clone().unwrap_or_default())));
    }
    let base = g.surj_x.base().to_vec();
    let nerve = Arc::new(cech_complex(&base, cover)?);
    let n = cover.len() as u32;
    let faces = nerve.faces(3).to_vec();
    let mut vals = Vec::with_capacity(faces.len());
    for f in &faces {
        let m = base[(f[0] / n) as usize];
        let idx = [f[0], f[1], f[2], f[3]].map(|v| (v % n) as usize);
        vals.push(epsilon_at(g, ch, idx, m));
    }
    let epsilon = Cochain::circle(nerve.clone(), 3, vals)?;
    let delta_defect = if nerve.dim() >= 4 { delta(&epsilon).max_abs() } else { 0.0 };
    Ok(Extraction { nerve, epsilon, delta_defect })
}

/// Class of ε in H⁴ of the Čech complex (always zero for a finite base).
pub fn epsilon_class(e: &Extraction, tol: f64) -> Result<cech::CohomologyClass> {
    Ok(cech::circle_class(&e.epsilon, tol)?)
}

// ---- fixtures ----

/// Singleton Y fibers, c = 0, λ = 0, â = 0.
pub fn trivial_2gerbe(surj_x: FinSurjection) -> Fin2Gerbe {
    let (pairs, index) = enumerate_pairs(&surj_x);
    let y_over: BTreeMap<Point, (Point, Point)> = pairs.iter().enumerate().map(|(i, &p)| (i as Point, p)).collect();
    let mut m = HashMap::new();
    for t in surj_x.fiber_tuples(3) {
        let y = |a, b| index[&(a, b)];
        m.insert([y(t[1], t[2]), y(t[0], t[1])], y(t[0], t[2]));
    }
    Fin2Gerbe::new(surj_x, &y_over, HashMap::new(), m, HashMap::new(), HashMap::new()).expect("trivial model")
}

/// Random coherent model: Q = δb, m random, λ built from b and a random κ
/// on composable pairs, â fixed by descent up to α = δβ for random β on X-triples.
pub fn random_2gerbe<R: Rng>(rng: &mut R, base: usize, max_x: usize, max_y: usize) -> Fin2Gerbe {
    let surj_x = gerbe::random_surjection(rng, base, max_x);
    let (pairs, _) = enumerate_pairs(&surj_x);
    let mut y_over = BTreeMap::new();
    for &p in &pairs {
        for _ in 0..rng.gen_range(1..=max_y) {
            y_over.insert(y_over.len() as Point, p);
        }
    }
    let skel = Fin2Gerbe::new(surj_x.clone(), &y_over, HashMap::new(), HashMap::new(), HashMap::new(), HashMap::new())
        .expect("skeleton");
    let qg = gerbe::random_gerbe(rng, skel.q.surj.clone());
    let b = |y1: Point, y2: Point| qg.potential(y1, y2);
    let mut m = HashMap::new();
    let mut kappa = HashMap::new();
    for t in surj_x.fiber_tuples(3) {
        for [g, f] in skel.composable_over(xs(&t)) {
            let target = skel.ys_over(t[0], t[2]);
            m.insert([g, f], target[rng.gen_range(0..target.len())]);
            kappa.insert([g, f], rng.gen::<f64>());
        }
    }
    let mut beta = HashMap::new();
    for t in surj_x.fiber_tuples(3) {
        beta.insert([t[0], t[1], t[2]], rng.gen::<f64>());
    }
    let mut m_hat = HashMap::new();
    for t in surj_x.fiber_tuples(3) {
        let ws = skel.composable_over(xs(&t));
        for w in &ws {
            for v in &ws {
                let l = b(w[0], v[0]) + b(w[1], v[1]) - b(m[w], m[v]) + kappa[v] - kappa[w];
                m_hat.insert([w[0], w[1], v[0], v[1]], wrap(l));
            }
        }
    }
    let mm = |g: Point, f: Point| m[&[g, f]];
    let mut a_hat = HashMap::new();
    for t in surj_x.fiber_tuples(4) {
        let x: [Point; 4] = xs(&t);
        let bt = |a: Point, c: Point, d: Point| beta[&[a, c, d]];
        let alpha = bt(x[1], x[2], x[3]) - bt(x[0], x[2], x[3]) + bt(x[0], x[1], x[3]) - bt(x[0], x[1], x[2]);
        for [h, g, f] in skel.composable3_over(x) {
            let k1 = kappa[&[h, g]] + kappa[&[mm(h, g), f]];
            let k2 = kappa[&[g, f]] + kappa[&[h, mm(g, f)]];
            let v = k2 - k1 + alpha - b(mm(mm(h, g), f), mm(h, mm(g, f)));
            a_hat.insert([h, g, f], wrap(v));
        }
    }
    Fin2Gerbe::new(surj_x, &y_over, qg.cocycle().clone(), m, m_hat, a_hat).expect("generator")
}

/// Random X-quadruple phase to use with `twisted_by`.
pub fn random_quadruple_phase<R: Rng>(rng: &mut R, surj_x: &FinSurjection) -> HashMap<[Point; 4], f64> {
    surj_x.fiber_tuples(4).into_iter().map(|t| (xs(&t), rng.gen::<f64>())).collect()
}

// ---- JSON ----

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Fin2GerbeJson {
    pub x: SurjectionJson,
    /// Y point → its X-pair
    pub y: BTreeMap<String, [Point; 2]>,
    #[serde(default)]
    pub c: BTreeMap<String, f64>,
    pub m: BTreeMap<String, Point>,
    #[serde(default)]
    pub m_hat: BTreeMap<String, f64>,
    #[serde(default)]
    pub a_hat: BTreeMap<String, f64>,
}

fn key<const N: usize>(s: &str) -> Result<[Point; N]> {
    let v = parse_face_key(s).ok_or_else(|| TwoGerbeError::Invalid(format!("bad key {s:?}")))?;
    v.try_into().map_err(|_| TwoGerbeError::Invalid(format!("key {s:?} needs {N} entries")))
}

fn phases<const N: usize>(m: &BTreeMap<String, f64>) -> Result<HashMap<[Point; N], f64>> {
    m.iter().map(|(k, v)| Ok((key::<N>(k)?, *v))).collect()
}

fn keyed<const N: usize>(m: &HashMap<[Point; N], f64>) -> BTreeMap<String, f64> {
    m.iter().filter(|(_, v)| **v != 0.0).map(|(k, v)| (face_key(k), *v)).collect()
}

impl Fin2GerbeJson {
    pub fn from_2gerbe(g: &Fin2Gerbe) -> Self {
        Fin2GerbeJson {
            x: SurjectionJson::from_surj(&g.surj_x),
            y: g.y_points().iter().map(|&y| (y.to_string(), g.pair_of(y).into())).collect(),
            c: keyed(g.q.cocycle()),
            m: g.m.iter().map(|(k, v)| (face_key(k), *v)).collect(),
            m_hat: keyed(&g.m_hat),
            a_hat: keyed(&g.a_hat),
        }
    }

    pub fn build(&self) -> Result<Fin2Gerbe> {
        let surj = self.x.build()?;
        let mut y_over = BTreeMap::new();
        for (k, p) in &self.y {
            let [y] = key::<1>(k)?;
            y_over.insert(y, (p[0], p[1]));
        }
        let mut m = HashMap::new();
        for (k, &v) in &self.m {
            m.insert(key::<2>(k)?, v);
        }
        Fin2Gerbe::new(surj, &y_over, phases(&self.c)?, m, phases(&self.m_hat)?, phases(&self.a_hat)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bicat::check_bicat;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const TOL: f64 = 1e-9;

    fn cover_all(base: &[Point], n: usize) -> Vec<Vec<Point>> {
        (0..n).map(|_| base.to_vec()).collect()
    }

    #[test]
    fn trivial_model_validates() {
        let g = trivial_2gerbe(FinSurjection::from_sizes(&[2, 3]).unwrap());
        let rep = validate_2gerbe(&g, TOL);
        assert!(rep.pass(), "{rep:?}");
    }

    #[test]
    fn random_models_validate() {
        for seed in 0..8 {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let g = random_2gerbe(&mut r, 2, 3, 2);
            let rep = validate_2gerbe(&g, TOL);
            assert!(rep.pass(), "seed {seed}: {rep:?}");
        }
    }

    #[test]
    fn constant_associator_defect_is_the_constant() {
        let g = trivial_2gerbe(FinSurjection::from_sizes(&[2]).unwrap()).twisted_by(|_| 0.125);
        let rep = validate_2gerbe(&g, TOL);
        assert!(rep.get("a_descends").unwrap().pass);
        let c = rep.get("coherence").unwrap();
        assert!(!c.pass);
        assert!((c.defect - 0.125).abs() < 1e-12);
    }

    #[test]
    fn generic_quadruple_twist_breaks_coherence() {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let g = random_2gerbe(&mut r, 2, 2, 2);
        let alpha = random_quadruple_phase(&mut r, &g.surj_x);
        let t = g.twisted_by(|x| alpha[&x]);
        let rep = validate_2gerbe(&t, TOL);
        assert!(rep.get("a_descends").unwrap().pass);
        let c = rep.get("coherence").unwrap();
        assert!(!c.pass);
        assert!(c.witness.as_ref().unwrap().contains("X-quintuple"));
    }

    #[test]
    fn coboundary_twist_keeps_coherence() {
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let g = random_2gerbe(&mut r, 2, 3, 2);
        let beta: HashMap<[Point; 3], f64> =
            g.surj_x.fiber_tuples(3).into_iter().map(|t| (xs(&t), r.gen())).collect();
        let t = g.twisted_by(|x| {
            beta[&[x[1], x[2], x[3]]] - beta[&[x[0], x[2], x[3]]] + beta[&[x[0], x[1], x[3]]]
                - beta[&[x[0], x[1], x[2]]]
        });
        assert!(validate_2gerbe(&t, TOL).pass());
    }

    #[test]
    fn every_single_sign_flip_is_detected() {
        let mut r = ChaCha8Rng::seed_from_u64(9);
        let g = loop {
            let g = random_2gerbe(&mut r, 1, 3, 2);
            if g.surj_x.total().len() == 3 {
                break g;
            }
        };
        assert!(coherence_defect_with_signs(&g, COHERENCE_SIGNS).0 < TOL);
        for i in 0..5 {
            let mut s = COHERENCE_SIGNS;
            s[i] = -s[i];
            assert!(coherence_defect_with_signs(&g, s).0 > 1e-3, "flip {i} undetected");
        }
    }

    #[test]
    fn bicat_from_point() {
        let g = trivial_2gerbe(FinSurjection::from_sizes(&[1]).unwrap());
        let b = restrict_to_point(&g, 0).unwrap();
        assert_eq!((b.objects.len(), b.cells.len()), (1, 1));
        assert!(check_bicat(&b, TOL).pass());
        for seed in 0..6 {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let g = random_2gerbe(&mut r, 2, 3, 2);
            for &m in g.surj_x.base() {
                let b = restrict_to_point(&g, m).unwrap();
                let rep = check_bicat(&b, TOL);
                assert!(rep.pass(), "seed {seed} m {m}: {rep:?}");
                assert!(!rep.notes.is_empty());
            }
        }
    }

    #[test]
    fn incoherent_model_breaks_bicat_pentagon() {
        let g = trivial_2gerbe(FinSurjection::from_sizes(&[2]).unwrap()).twisted_by(|_| 0.2);
        let rep = check_bicat(&restrict_to_point(&g, 0).unwrap(), TOL);
        assert!(!rep.get("pentagon").unwrap().pass);
    }

    #[test]
    fn trivial_epsilon_vanishes() {
        let g = trivial_2gerbe(FinSurjection::from_sizes(&[2, 2]).unwrap());
        let cover = cover_all(g.surj_x.base(), 5);
        let e = extract_3cocycle(&g, &cover, &SectionChoice::canonical(&g, &cover)).unwrap();
        assert_eq!(e.epsilon.max_abs(), 0.0);
    }

    #[test]
    fn epsilon_is_a_cocycle_with_choice_independent_class() {
        for seed in 0..6 {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let g = random_2gerbe(&mut r, 3, 2, 2);
            let base = g.surj_x.base().to_vec();
            let mut cover = cover_all(&base, 6);
            cover[5].retain(|&m| m != base[0]);
            let e1 = extract_3cocycle(&g, &cover, &SectionChoice::random(&mut r, &g, &cover)).unwrap();
            let e2 = extract_3cocycle(&g, &cover, &SectionChoice::random(&mut r, &g, &cover)).unwrap();
            assert!(e1.delta_defect <= 1e-12, "seed {seed}: {}", e1.delta_defect);
            assert!(e2.delta_defect <= 1e-12);
            assert_eq!(epsilon_class(&e1, 1e-9).unwrap(), epsilon_class(&e2, 1e-9).unwrap());
            let diff = cech::product_cocycle(&e1.epsilon, &cech::dual_cocycle(&e2.epsilon)).unwrap();
            cech::trivialize_circle(&diff, 1e-9).unwrap();
        }
    }

    #[test]
    fn extraction_refuses_incoherent_models() {
        let g = trivial_2gerbe(FinSurjection::from_sizes(&[2]).unwrap()).twisted_by(|_| 0.3);
        let cover = cover_all(g.surj_x.base(), 4);
        assert!(matches!(
            extract_3cocycle(&g, &cover, &SectionChoice::canonical(&g, &cover)),
            Err(TwoGerbeError::NotValid(_))
        ));
    }

    #[test]
    fn json_round_trip() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let g = random_2gerbe(&mut r, 2, 2, 2);
        let s = serde_json::to_string(&Fin2GerbeJson::from_2gerbe(&g)).unwrap();
        let back: Fin2GerbeJson = serde_json::from_str(&s).unwrap();
        let h = back.build().unwrap();
        assert_eq!(h.m, g.m);
        assert!(validate_2gerbe(&h, TOL).pass());
        assert_eq!(serde_json::to_string(&Fin2GerbeJson::from_2gerbe(&h)).unwrap(), s);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn coherent_models_give_bigroupoids(seed in 0u64..10_000) {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let g = random_2gerbe(&mut r, 2, 2, 2);
            prop_assert!(validate_2gerbe(&g, TOL).pass());
            for &m in g.surj_x.base() {
                prop_assert!(check_bicat(&restrict_to_point(&g, m).unwrap(), TOL).pass());
            }
        }
    }
}
