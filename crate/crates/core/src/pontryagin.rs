//! The Chern-Simons 2-gerbe of a clutched SU(2) bundle on S⁴ and its
//! integer class, from a star cover of ∂Δ⁵ and cube integrals of ν.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cech::{angle_dist, class_of, make_boundary_simplex, omit, wrap, CechError, Cochain, Complex, Face};
use crate::path_su2::{
    associator_square, compose_paths, compose_squares, degree_s3, fill_cube, fill_square, integrate_nu_cube,
    pole_candidates, stereo_path, stereo_square, CubeFaces, Mode, Path, PathError, Square, UQuat,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PontError {
    #[error("point is {0:.3e} from an excluded pole")]
    PoleTooClose(f64),
    #[error("no stereographic pole avoids the image over the dual cell of {0:?} (clearance {1:.3e})")]
    NoAvoidPoint(Vec<u32>, f64),
    #[error("{what} defect {defect:.3e} exceeds {tol:.1e}")]
    NumericDefectExceeded { what: String, defect: f64, tol: f64 },
    #[error("bad argument: {0}")]
    BadArgument(String),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Cech(#[from] CechError),
}

pub type Result<T> = std::result::Result<T, PontError>;

pub type Vec5 = [f64; 5];

fn dot(a: &Vec5, b: &Vec5) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(a: Vec5) -> Vec5 {
    let n = dot(&a, &a).sqrt();
    a.map(|x| x / n)
}

/// Distance on S⁴.
pub fn sphere_dist(a: &Vec5, b: &Vec5) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    2.0 * (d / 2.0).min(1.0).asin()
}

/// Orthonormal basis of the hyperplane Σx = 0 in ℝ⁶ by Gram-Schmidt, then the
/// simplex vertices in those coordinates.
fn simplex_vertices() -> [Vec5; 6] {
    let mut basis: Vec<[f64; 6]> = vec![];
    for i in 0..5 {
        let mut v = [0.0; 6];
        v[i] = 1.0;
        v[i + 1] = -1.0;
        for b in &basis {
            let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for k in 0..6 {
                v[k] -= p * b[k];
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        basis.push(v.map(|x| x / n));
    }
    std::array::from_fn(|i| {
        let mut e = [-1.0 / 6.0; 6];
        e[i] += 1.0;
        normalize(std::array::from_fn(|a| basis[a].iter().zip(&e).map(|(x, y)| x * y).sum()))
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SphereCover {
    pub vertices: [Vec5; 6],
    #[serde(skip)]
    pub nerve: Arc<Complex>,
    /// Every face with its normalized barycenter.
    pub samples: Vec<(Face, Vec5)>,
}

impl SphereCover {
    pub fn barycenter(&self, face: &[u32]) -> Vec5 {
        let mut s = [0.0; 5];
        for &v in face {
            for a in 0..5 {
                s[a] += self.vertices[v as usize][a];
            }
        }
        normalize(s)
    }

    /// Sample points in the open star of vertex v.
    pub fn star(&self, v: u32) -> impl Iterator<Item = &Vec5> {
        self.samples.iter().filter(move |(f, _)| f.contains(&v)).map(|(_, p)| p)
    }

    fn flat_barycenter(&self, face: &[u32]) -> Vec5 {
        let mut s = [0.0; 5];
        for &v in face {
            for a in 0..5 {
                s[a] += self.vertices[v as usize][a] / face.len() as f64;
            }
        }
        s
    }

    /// Faces of the nerve containing σ.
    pub fn cofaces(&self, sigma: &[u32]) -> Vec<Face> {
        (0..=self.nerve.dim()).flat_map(|k| self.nerve.faces(k)).filter(|f| sigma.iter().all(|v| f.contains(v))).cloned().collect()
    }

    /// Deterministic points of the dual cell of σ: the barycenters of its
    /// cofaces and random convex combinations of them.
    pub fn dual_samples(&self, sigma: &[u32], count: usize) -> Vec<Vec5> {
        let co: Vec<Vec5> = self.cofaces(sigma).iter().map(|f| self.flat_barycenter(f)).collect();
        let seed = sigma.iter().fold(7u64, |h, &v| h * 31 + v as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out: Vec<Vec5> = co.iter().map(|p| normalize(*p)).collect();
        for _ in 0..count {
            let w: Vec<f64> = co.iter().map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
            let mut p = [0.0; 5];
            for (b, wi) in co.iter().zip(&w) {
                for a in 0..5 {
                    p[a] += wi * b[a];
                }
            }
            out.push(normalize(p));
        }
        out
    }

    /// The dual 1-cell of a quadruple: from one quintuple barycenter through
    /// the quadruple barycenter to the other, `steps` segments per half.
    pub fn dual_edge(&self, f: &[u32], steps: usize) -> Result<(Face, Face, Vec<Vec5>)> {
        let qs: Vec<Face> = self.quintuples().iter().filter(|q| f.iter().all(|v| q.contains(v))).cloned().collect();
        if qs.len() != 2 {
            return Err(PontError::BadArgument(format!("{f:?} is not a quadruple of the nerve")));
        }
        let (a, mid, b) = (self.flat_barycenter(&qs[0]), self.flat_barycenter(f), self.flat_barycenter(&qs[1]));
        let lerp = |x: &Vec5, y: &Vec5, t: f64| normalize(std::array::from_fn(|i| (1.0 - t) * x[i] + t * y[i]));
        let mut pts: Vec<Vec5> = (0..steps).map(|s| lerp(&a, &mid, s as f64 / steps as f64)).collect();
        pts.extend((0..=steps).map(|s| lerp(&mid, &b, s as f64 / steps as f64)));
        Ok((qs[0].clone(), qs[1].clone(), pts))
    }

    pub fn quadruples(&self) -> &[Face] {
        self.nerve.faces(3)
    }

    pub fn quintuples(&self) -> &[Face] {
        self.nerve.faces(4)
    }

    /// Whether p lies in the open star of v: its nearest vertex direction
    /// ordering puts v among the barycentric support.
    pub fn in_star(&self, v: u32, p: &Vec5) -> bool {
        // barycentric coordinates on the radial projection of ∂Δ⁵
        let w: Vec<f64> = self.vertices.iter().map(|u| dot(u, p)).collect();
        let min = w.iter().copied().fold(f64::INFINITY, f64::min);
        w[v as usize] > min + 1e-12
    }
}

pub fn make_cover() -> SphereCover {
    let vertices = simplex_vertices();
    let nerve = Arc::new(make_boundary_simplex(4));
    let mut cover = SphereCover { vertices, nerve: nerve.clone(), samples: vec![] };
    let mut samples = vec![];
    for k in 0..=nerve.dim() {
        for f in nerve.faces(k) {
            samples.push((f.clone(), cover.barycenter(f)));
        }
    }
    cover.samples = samples;
    cover
}

/// g_ij = u^{k(σ_j − σ_i)} with u the unit quaternionic coordinate along an
/// axis through two opposite triangle barycenters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Clutch {
    pub k: i64,
    pub sigma: [u8; 6],
    /// pole[c] is the point chart c excludes.
    pub poles: [Vec5; 2],
    /// Orthonormal frame: axis first, then the quaternion directions.
    pub frame: [Vec5; 5],
    /// Stereographic pole avoided by g_ij over the dual cell of {i,j}.
    pub avoid_pair: Vec<([u32; 2], UQuat)>,
    /// Pole avoided by both boundary paths of γ_ijk over the dual cell of {i,j,k}.
    pub avoid_triple: Vec<([u32; 3], UQuat)>,
    /// Smallest sampled distance to an avoided pole.
    pub margin: f64,
}

pub const POLE_CLEARANCE: f64 = 0.1;
const FRAME_SEED: u64 = 5;
/// −1 is kept as the pair pole (subgroup paths) when it clears this.
pub const SUBGROUP_MARGIN: f64 = 0.3;
pub const AVOID_MIN: f64 = 0.05;
const DUAL_SAMPLES: usize = 1500;
const PATH_SAMPLES: usize = 32;

/// Gram-Schmidt from seeded vectors, so that preimages of points of S³ meet
/// the dual cells in general position.
fn frame_from(axis: Vec5) -> [Vec5; 5] {
    let mut rng = ChaCha8Rng::seed_from_u64(FRAME_SEED);
    let mut out = vec![axis];
    for _ in 0..5 {
        let mut v: Vec5 = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        for b in &out {
            let p = dot(&v, b);
            for a in 0..5 {
                v[a] -= p * b[a];
            }
        }
        let n = dot(&v, &v).sqrt();
        if n > 1e-6 && out.len() < 5 {
            out.push(v.map(|x| x / n));
        }
    }
    [out[0], out[1], out[2], out[3], out[4]]
}

impl Clutch {
    pub fn new(cover: &SphereCover, k: i64) -> Result<Self> {
        let sigma = [0, 0, 0, 1, 1, 1];
        let north = cover.barycenter(&[0, 1, 2]);
        let south = north.map(|x| -x);
        let mut c = Clutch {
            k,
            sigma,
            poles: [south, north],
            frame: frame_from(north),
            avoid_pair: vec![],
            avoid_triple: vec![],
            margin: PI,
        };
        for v in 0..6u32 {
            let pole = c.poles[sigma[v as usize] as usize];
            for p in cover.star(v) {
                let d = sphere_dist(p, &pole);
                if d < POLE_CLEARANCE {
                    return Err(PontError::PoleTooClose(d));
                }
            }
        }
        c.choose_poles(cover)?;
        Ok(c)
    }

    fn choose_poles(&mut self, cover: &SphereCover) -> Result<()> {
        let candidates = pole_candidates();
        let clearance = |img: &[UQuat], p: &UQuat| img.iter().map(|q| q.dist(p)).fold(PI, f64::min);
        let farthest = |img: &[UQuat]| {
            candidates
                .iter()
                .map(|p| (*p, clearance(img, p)))
                .fold((UQuat::ONE, -1.0), |b, x| if x.1 > b.1 { x } else { b })
        };
        for i in 0..6u32 {
            for j in i + 1..6 {
                let mut img = vec![UQuat::ONE];
                for m in cover.dual_samples(&[i, j], DUAL_SAMPLES) {
                    img.push(transition(self, i, j, &m)?);
                }
                let minus = UQuat::ONE.neg();
                let d = clearance(&img, &minus);
                let (pole, d) = if d >= SUBGROUP_MARGIN { (minus, d) } else { farthest(&img) };
                if d < AVOID_MIN {
                    return Err(PontError::NoAvoidPoint(vec![i, j], d));
                }
                self.margin = self.margin.min(d);
                self.avoid_pair.push(([i, j], pole));
            }
        }
        for i in 0..6u32 {
            for j in i + 1..6 {
                for k in j + 1..6 {
                    let mut img = vec![];
                    for m in cover.dual_samples(&[i, j, k], DUAL_SAMPLES / 4) {
                        let (p0, p1) = square_gamma_ends(self, i, j, k, &m, PATH_SAMPLES)?;
                        img.extend(p0.points);
                        img.extend(p1.points);
                    }
                    let (pole, d) = farthest(&img);
                    if d < AVOID_MIN {
                        return Err(PontError::NoAvoidPoint(vec![i, j, k], d));
                    }
                    self.margin = self.margin.min(d);
                    self.avoid_triple.push(([i, j, k], pole));
                }
            }
        }
        Ok(())
    }

    pub fn pair_pole(&self, i: u32, j: u32) -> UQuat {
        self.avoid_pair.iter().find(|(f, _)| *f == [i, j]).map(|x| x.1).unwrap_or(UQuat::ONE.neg())
    }

    pub fn triple_pole(&self, f: [u32; 3]) -> Option<UQuat> {
        self.avoid_triple.iter().find(|(g, _)| *g == f).map(|x| x.1)
    }

    /// The unit quaternionic coordinate away from both poles.
    pub fn u(&self, m: &Vec5) -> Result<UQuat> {
        let q: [f64; 4] = std::array::from_fn(|a| dot(m, &self.frame[a + 1]));
        let norm = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-9 {
            return Err(PontError::PoleTooClose(norm));
        }
        Ok(UQuat::from(q.map(|x| x / norm)))
    }

    /// The point of S⁴ on the equator with coordinate q.
    pub fn equator_point(&self, q: UQuat) -> Vec5 {
        let c: [f64; 4] = q.into();
        let mut m = [0.0; 5];
        for a in 0..4 {
            for b in 0..5 {
                m[b] += c[a] * self.frame[a + 1][b];
            }
        }
        m
    }
}

pub fn transition(c: &Clutch, i: u32, j: u32, m: &Vec5) -> Result<UQuat> {
    let e = c.sigma[j as usize] as i64 - c.sigma[i as usize] as i64;
    if e == 0 || c.k == 0 {
        return Ok(UQuat::ONE);
    }
    Ok(c.u(m)?.powi(c.k * e))
}

/// γ_ij: 1 → g_ij, a straight segment in the chart from the pair pole; for
/// the pole −1 this stays in the one-parameter subgroup of g_ij.
pub fn path_gamma(c: &Clutch, i: u32, j: u32, m: &Vec5, n: usize) -> Result<Path> {
    let g = transition(c, i, j, m)?;
    if g == UQuat::ONE {
        return Ok(Path::constant(g, n)?);
    }
    Ok(stereo_path(c.pair_pole(i, j), UQuat::ONE, g, n)?)
}

fn square_gamma_ends(c: &Clutch, i: u32, j: u32, k: u32, m: &Vec5, n: usize) -> Result<(Path, Path)> {
    let gij = transition(c, i, j, m)?;
    let top = compose_paths(&path_gamma(c, j, k, m, n)?.left_mul(gij), &path_gamma(c, i, j, m, n)?)?;
    Ok((path_gamma(c, i, k, m, n)?, top))
}

/// γ_ijk: γ_ik ⇒ γ_ij then g_ij·γ_jk, straight in the chart from the triple pole.
pub fn square_gamma(c: &Clutch, i: u32, j: u32, k: u32, m: &Vec5, n: usize) -> Result<Square> {
    let (p0, p1) = square_gamma_ends(c, i, j, k, m, n)?;
    match c.triple_pole([i, j, k]) {
        Some(pole) => Ok(stereo_square(pole, &p0, &p1)?),
        None => Ok(fill_square(&p0, &p1)?),
    }
}

/// The two r-faces of H_ijkl.
pub fn cocycle_faces(c: &Clutch, f: [u32; 4], m: &Vec5, n: usize) -> Result<(Square, Square)> {
    let [i, j, k, l] = f;
    let gij = transition(c, i, j, m)?;
    let gijk = gij * transition(c, j, k, m)?;
    let gam = |a, b| path_gamma(c, a, b, m, n);
    let gij_p = gam(i, j)?;
    let tjk = gam(j, k)?.left_mul(gij);
    let tkl = gam(k, l)?.left_mul(gijk);
    // r = 0: γ_ijl, then g_ij·γ_jkl whiskered by γ_ij
    let sijl = square_gamma(c, i, j, l, m, n)?;
    let sjkl = square_gamma(c, j, k, l, m, n)?.left_mul(gij);
    let top_jkl = compose_squares(&sjkl, &Square::constant(&gij_p), Mode::Horizontal)?;
    let v0 = compose_squares(&top_jkl, &sijl, Mode::Vertical)?;
    // r = 1: γ_ikl, then γ_ijk whiskered by g_ik·γ_kl, then the associator
    let sikl = square_gamma(c, i, k, l, m, n)?;
    let sijk = square_gamma(c, i, j, k, m, n)?;
    let mid = compose_squares(&Square::constant(&tkl), &sijk, Mode::Horizontal)?;
    let abar = associator_square(&tkl, &tjk, &gij_p)?.reversed();
    let v1 = compose_squares(&abar, &compose_squares(&mid, &sikl, Mode::Vertical)?, Mode::Vertical)?;
    Ok((v0, v1))
}

/// ∫ H_ijkl*ν mod 1 at m.
pub fn cocycle_value(c: &Clutch, f: [u32; 4], m: &Vec5, n: usize) -> Result<f64> {
    let (v0, v1) = cocycle_faces(c, f, m, n)?;
    let cube = fill_cube(&CubeFaces::between(&v0, &v1)?)?;
    Ok(wrap(integrate_nu_cube(&cube)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadValue {
    pub face: Vec<u32>,
    /// The quintuple whose barycenter is the evaluation point.
    pub at: Vec<u32>,
    pub angle: f64,
    /// Real lift used for the integer cochain.
    pub lift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PontReport {
    pub k: i64,
    pub grid: usize,
    /// g_F at the two quintuple barycenters of each quadruple F
    pub values: Vec<QuadValue>,
    /// max over quintuples of |Σ ±g_F| mod 1
    pub delta_defect: f64,
    /// max over quintuples of the distance of δ(lift) to ℤ
    pub integrality_defect: f64,
    /// largest step of g_F between consecutive samples of a dual edge
    pub continuity: f64,
    /// largest |lift(Q₂) − lift(Q₁)| over quadruples
    pub endpoint_spread: f64,
    /// smallest clearance of the chosen stereographic poles
    pub pole_margin: f64,
    pub cube_evaluations: usize,
    /// integer 4-cochain on the quintuples
    pub cochain: Vec<i64>,
    pub class: i64,
    pub elapsed_ms: u128,
}

pub const INTEGRALITY_TOL: f64 = 0.1;
/// Steps per half of each dual edge.
pub const EDGE_STEPS: usize = 12;
/// Largest step between consecutive samples accepted by the unwrap.
pub const CONTINUITY_TOL: f64 = 0.25;

fn signed_wrap(x: f64) -> f64 {
    x - x.round()
}

/// Evaluates each quadruple along its dual edge, lifts by continuity between
/// the two quintuple barycenters and reads off the class of δ(lift) in
/// H⁴(∂Δ⁵) = ℤ.
pub fn compute_p1(k: i64, n: usize, tol: f64) -> Result<PontReport> {
    if n < 16 {
        return Err(PontError::BadArgument(format!("grid {n} below 16")));
    }
    let start = Instant::now();
    let cover = make_cover();
    let clutch = Clutch::new(&cover, k)?;
    let quads = cover.quadruples().to_vec();
    let quints = cover.quintuples().to_vec();
    let edges: Vec<(Face, Face, Vec<Vec5>)> =
        quads.iter().map(|f| cover.dual_edge(f, EDGE_STEPS)).collect::<Result<_>>()?;
    let jobs: Vec<(usize, Vec5)> =
        edges.iter().enumerate().flat_map(|(e, (_, _, pts))| pts.iter().map(move |m| (e, *m))).collect();
    let angles: Vec<f64> = jobs
        .par_iter()
        .map(|(e, m)| {
            let f = &quads[*e];
            cocycle_value(&clutch, [f[0], f[1], f[2], f[3]], m, n)
        })
        .collect::<Result<_>>()?;
    let mut values: Vec<QuadValue> = vec![];
    let (mut continuity, mut spread): (f64, f64) = (0.0, 0.0);
    let per = 2 * EDGE_STEPS + 1;
    for (e, (q1, q2, _)) in edges.iter().enumerate() {
        let a = &angles[e * per..(e + 1) * per];
        let mut lift = a[0];
        for w in a.windows(2) {
            let step = signed_wrap(w[1] - w[0]);
            continuity = continuity.max(step.abs());
            lift += step;
        }
        spread = spread.max((lift - a[0]).abs());
        values.push(QuadValue { face: quads[e].clone(), at: q1.clone(), angle: a[0], lift: a[0] });
        values.push(QuadValue { face: quads[e].clone(), at: q2.clone(), angle: a[per - 1], lift });
    }
    if continuity > CONTINUITY_TOL {
        return Err(PontError::NumericDefectExceeded { what: "continuity".into(), defect: continuity, tol: CONTINUITY_TOL });
    }
    let lookup = |f: &Face, q: &Face| values.iter().find(|v| &v.face == f && &v.at == q).unwrap();
    let (mut delta_defect, mut integrality_defect): (f64, f64) = (0.0, 0.0);
    let mut cochain = vec![];
    for q in &quints {
        let (mut raw, mut lifted) = (0.0, 0.0);
        for i in 0..q.len() {
            let v = lookup(&omit(q, i), q);
            let sgn = if i % 2 == 0 { 1.0 } else { -1.0 };
            raw += sgn * v.angle;
            lifted += sgn * v.lift;
        }
        delta_defect = delta_defect.max(angle_dist(raw));
        integrality_defect = integrality_defect.max(angle_dist(lifted));
        cochain.push(lifted.round() as i64);
    }
    if delta_defect > tol {
        return Err(PontError::NumericDefectExceeded { what: "delta".into(), defect: delta_defect, tol });
    }
    if integrality_defect > INTEGRALITY_TOL {
        return Err(PontError::NumericDefectExceeded {
            what: "integrality".into(),
            defect: integrality_defect,
            tol: INTEGRALITY_TOL,
        });
    }
    let cls = class_of(&Cochain::integer(cover.nerve.clone(), 4, cochain.clone())?, true)?;
    Ok(PontReport {
        k,
        grid: n,
        values,
        delta_defect,
        integrality_defect,
        continuity,
        endpoint_spread: spread,
        pole_margin: clutch.margin,
        cube_evaluations: jobs.len(),
        cochain,
        class: cls.free[0],
        elapsed_ms: start.elapsed().as_millis(),
    })
}

/// Degree of the clutching map u^k on the equatorial 3-sphere.
pub fn degree_oracle(k: i64, n: usize) -> Result<f64> {
    let cover = make_cover();
    let c = Clutch::new(&cover, k)?;
    Ok(degree_s3(|q| c.u(&c.equator_point(q)).map(|u| u.powi(k)).unwrap_or(UQuat::ONE), n)?)
}

/// Geodesic radius of each vertex star sample from its excluded pole.
pub fn pole_clearance(cover: &SphereCover, c: &Clutch) -> f64 {
    (0..6u32)
        .flat_map(|v| cover.star(v).map(move |p| (v, p)))
        .map(|(v, p)| sphere_dist(p, &c.poles[c.sigma[v as usize] as usize]))
        .fold(PI, f64::min)
}
