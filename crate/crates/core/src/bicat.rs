//! Finite bicategories whose 2-cell sets are circle torsors.
//!
//! Between 1-cells f, g in the same `class` there is a circle's worth of
//! 2-cells, each written as a phase. Composites carry correction phases:
//! v∘u = u + v + vert(f,g,h) and β∗α = β + α + horiz(g,g',f,f').
//! A finite group fits by giving every 1-cell its own class.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::cech::{angle_dist, face_key, parse_face_key, wrap};
use crate::report::{Report, Worst};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell1 {
    pub src: usize,
    pub tgt: usize,
    #[serde(default)]
    pub label: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Bicat {
    pub objects: Vec<String>,
    pub cells: Vec<Cell1>,
    /// 2-cells f ⇒ g exist iff class[f] == class[g].
    pub class: Vec<usize>,
    pub vert: HashMap<[usize; 3], f64>,
    /// [g, f] ↦ g∘f for tgt f = src g.
    pub comp: HashMap<[usize; 2], usize>,
    pub horiz: HashMap<[usize; 4], f64>,
    /// [h, g, f] ↦ a: (h∘g)∘f ⇒ h∘(g∘f)
    pub assoc: HashMap<[usize; 3], f64>,
    pub unit: Vec<usize>,
    /// L_f: f∘1 ⇒ f
    pub left: Vec<f64>,
    /// R_f: 1∘f ⇒ f
    pub right: Vec<f64>,
    /// Identities were built by `synthesize_units` rather than given.
    pub synthesized_units: bool,
}

impl Bicat {
    pub fn vert(&self, f: usize, g: usize, h: usize) -> f64 {
        self.vert.get(&[f, g, h]).copied().unwrap_or(0.0)
    }

    pub fn horiz(&self, g: usize, g2: usize, f: usize, f2: usize) -> f64 {
        self.horiz.get(&[g, g2, f, f2]).copied().unwrap_or(0.0)
    }

    pub fn assoc(&self, h: usize, g: usize, f: usize) -> f64 {
        self.assoc.get(&[h, g, f]).copied().unwrap_or(0.0)
    }

    pub fn comp(&self, g: usize, f: usize) -> usize {
        self.comp[&[g, f]]
    }

    pub fn hom(&self, f: usize, g: usize) -> bool {
        self.class[f] == self.class[g]
    }

    /// Identity 2-cell of f.
    pub fn id2(&self, f: usize) -> f64 {
        wrap(-self.vert(f, f, f))
    }

    /// v∘u for u: f ⇒ g, v: g ⇒ h.
    pub fn vcomp(&self, f: usize, g: usize, h: usize, v: f64, u: f64) -> f64 {
        wrap(u + v + self.vert(f, g, h))
    }

    /// β∗α for α: f ⇒ f2, β: g ⇒ g2.
    pub fn hcomp(&self, g: usize, g2: usize, f: usize, f2: usize, b: f64, a: f64) -> f64 {
        wrap(b + a + self.horiz(g, g2, f, f2))
    }

    /// Inverse of u: f ⇒ g.
    pub fn inv2(&self, f: usize, g: usize, u: f64) -> f64 {
        wrap(self.id2(f) - u - self.vert(f, g, f))
    }

    fn composable(&self) -> Vec<(usize, usize)> {
        let mut out = vec![];
        for (f, cf) in self.cells.iter().enumerate() {
            for (g, cg) in self.cells.iter().enumerate() {
                if cf.tgt == cg.src {
                    out.push((g, f));
                }
            }
        }
        out
    }

    fn class_members(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut m: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (f, &c) in self.class.iter().enumerate() {
            m.entry(c).or_default().push(f);
        }
        m
    }

    /// 1-cells g with 2-cells f ⇒ g.
    pub fn parallel(&self, f: usize) -> Vec<usize> {
        (0..self.cells.len()).filter(|&g| self.hom(f, g)).collect()
    }

    /// Builds L and R from the associator and the 2-cell ι_A = 0: 1_A∘1_A ⇒ 1_A,
    /// by solving L_f ∗ 1 = (1_f ∗ ι)∘a(f,1,1) and 1 ∗ R_f = (ι ∗ 1_f)∘a(1,1,f)⁻¹.
    pub fn synthesize_units(&mut self) {
        let n = self.cells.len();
        let mut left = vec![0.0; n];
        let mut right = vec![0.0; n];
        for f in 0..n {
            let (a, b) = (self.cells[f].src, self.cells[f].tgt);
            let (ua, ub) = (self.unit[a], self.unit[b]);
            // L
            let f1 = self.comp(f, ua);
            let f1_1 = self.comp(f1, ua);
            let u11 = self.comp(ua, ua);
            let f_11 = self.comp(f, u11);
            let whisk = self.hcomp(f, f, u11, ua, self.id2(f), 0.0);
            let rhs = self.vcomp(f1_1, f_11, f1, whisk, self.assoc(f, ua, ua));
            left[f] = wrap(rhs - self.id2(ua) - self.horiz(f1, f, ua, ua));
            // R
            let v11 = self.comp(ub, ub);
            let v11_f = self.comp(v11, f);
            let vf = self.comp(ub, f);
            let v_vf = self.comp(ub, vf);
            let ainv = self.inv2(v11_f, v_vf, self.assoc(ub, ub, f));
            let whisk = self.hcomp(v11, ub, f, f, 0.0, self.id2(f));
            let rhs = self.vcomp(v_vf, v11_f, vf, whisk, ainv);
            right[f] = wrap(rhs - self.id2(ub) - self.horiz(ub, ub, vf, f));
        }
        self.left = left;
        self.right = right;
        self.synthesized_units = true;
    }

    /// Copy with one associator component shifted.
    pub fn with_assoc_shift(&self, key: [usize; 3], by: f64) -> Bicat {
        let mut b = self.clone();
        let v = b.assoc(key[0], key[1], key[2]);
        b.assoc.insert(key, wrap(v + by));
        b
    }
}

fn structure_errors(b: &Bicat) -> Option<String> {
    let n = b.cells.len();
    if b.class.len() != n || b.left.len() != n || b.right.len() != n {
        return Some("per-cell tables have the wrong length".into());
    }
    if b.unit.len() != b.objects.len() {
        return Some("one identity 1-cell per object required".into());
    }
    for (f, c) in b.cells.iter().enumerate() {
        if c.src >= b.objects.len() || c.tgt >= b.objects.len() {
            return Some(format!("1-cell {f} has an unknown endpoint"));
        }
    }
    for f in 0..n {
        for g in 0..n {
            if b.hom(f, g) && (b.cells[f].src != b.cells[g].src || b.cells[f].tgt != b.cells[g].tgt) {
                return Some(format!("2-cells {f} ⇒ {g} between non-parallel 1-cells"));
            }
        }
    }
    for (a, &u) in b.unit.iter().enumerate() {
        if u >= n || b.cells[u].src != a || b.cells[u].tgt != a {
            return Some(format!("identity of object {a} is not an endomorphism of it"));
        }
    }
    for (g, f) in b.composable() {
        match b.comp.get(&[g, f]) {
            None => return Some(format!("composite {g}∘{f} missing")),
            Some(&h) if h >= n || b.cells[h].src != b.cells[f].src || b.cells[h].tgt != b.cells[g].tgt => {
                return Some(format!("composite {g}∘{f} has the wrong endpoints"))
            }
            _ => {}
        }
    }
    for (g, f) in b.composable() {
        for g2 in b.parallel(g) {
            for f2 in b.parallel(f) {
                if !b.hom(b.comp(g, f), b.comp(g2, f2)) {
                    return Some(format!("no 2-cells {g}∘{f} ⇒ {g2}∘{f2}"));
                }
            }
        }
    }
    None
}

/// Checks the bicategory and bigroupoid axioms; phases are sampled at 0 and at
/// the given extra values, which matters only for non-affine data.
pub fn check_bicat(b: &Bicat, tol: f64) -> Report {
    let mut rep = Report::default();
    if let Some(e) = structure_errors(b) {
        rep.push_flag("structure", false, Some(e));
        return rep;
    }
    rep.push_flag("structure", true, None);
    if b.synthesized_units {
        rep.notes.push("identity 1-cells and L/R synthesized from the associator".into());
    }
    let members = b.class_members();
    let n = b.cells.len();

    let mut w = Worst::default();
    for cls in members.values() {
        for &f1 in cls {
            for &f2 in cls {
                for &f3 in cls {
                    for &f4 in cls {
                        let d = b.vert(f2, f3, f4) - b.vert(f1, f3, f4) + b.vert(f1, f2, f4)
                            - b.vert(f1, f2, f3);
                        w.see(angle_dist(d), || format!("2-cells {f1} ⇒ {f2} ⇒ {f3} ⇒ {f4}"));
                    }
                }
            }
        }
    }
    rep.push("vertical_associativity", w.defect, tol, w.witness);

    let mut w = Worst::default();
    for cls in members.values() {
        for &f in cls {
            for &g in cls {
                let d1 = angle_dist(b.vert(f, g, g) - b.vert(g, g, g));
                let d2 = angle_dist(b.vert(f, f, g) - b.vert(f, f, f));
                w.see(d1.max(d2), || format!("unit laws on {f} ⇒ {g}"));
            }
        }
    }
    rep.push("vertical_units", w.defect, tol, w.witness);

    let mut w = Worst::default();
    for cls in members.values() {
        for &f in cls {
            for &g in cls {
                let d = b.id2(f) - b.vert(f, g, f) + b.vert(g, f, g) - b.id2(g);
                w.see(angle_dist(d), || format!("inverse of a 2-cell {f} ⇒ {g}"));
            }
        }
    }
    rep.push("two_cell_inverses", w.defect, tol, w.witness);

    // interchange and identities for ∗
    let comp = b.composable();
    let mut w = Worst::default();
    for &(g, f) in &comp {
        let gf = b.comp(g, f);
        let d = b.hcomp(g, g, f, f, b.id2(g), b.id2(f)) - b.id2(gf);
        w.see(angle_dist(d), || format!("1_{g} ∗ 1_{f}"));
        for g1 in b.parallel(g) {
            for g2 in b.parallel(g) {
                for f1 in b.parallel(f) {
                    for f2 in b.parallel(f) {
                        let lhs = b.vert(g, g1, g2) + b.vert(f, f1, f2) + b.horiz(g, g2, f, f2);
                        let rhs = b.horiz(g1, g2, f1, f2)
                            + b.horiz(g, g1, f, f1)
                            + b.vert(gf, b.comp(g1, f1), b.comp(g2, f2));
                        w.see(angle_dist(lhs - rhs), || {
                            format!("interchange for {g} ⇒ {g1} ⇒ {g2} over {f} ⇒ {f1} ⇒ {f2}")
                        });
                    }
                }
            }
        }
    }
    rep.push("interchange", w.defect, tol, w.witness);

    // associator naturality
    let mut w = Worst::default();
    let mut triples = vec![];
    for &(g, f) in &comp {
        for h in 0..n {
            if b.cells[h].src == b.cells[g].tgt {
                triples.push((h, g, f));
            }
        }
    }
    for &(h, g, f) in &triples {
        for h2 in b.parallel(h) {
            for g2 in b.parallel(g) {
                for f2 in b.parallel(f) {
                    let (hg, hg2) = (b.comp(h, g), b.comp(h2, g2));
                    let (gf, gf2) = (b.comp(g, f), b.comp(g2, f2));
                    let (hg_f, hg_f2) = (b.comp(hg, f), b.comp(hg2, f2));
                    let (h_gf, h_gf2) = (b.comp(h, gf), b.comp(h2, gf2));
                    let lhs = b.horiz(h, h2, g, g2)
                        + b.horiz(hg, hg2, f, f2)
                        + b.assoc(h2, g2, f2)
                        + b.vert(hg_f, hg_f2, h_gf2);
                    let rhs = b.horiz(g, g2, f, f2)
                        + b.horiz(h, h2, gf, gf2)
                        + b.assoc(h, g, f)
                        + b.vert(hg_f, h_gf, h_gf2);
                    w.see(angle_dist(lhs - rhs), || {
                        format!("associator at ({h},{g},{f}) against ({h2},{g2},{f2})")
                    });
                }
            }
        }
    }
    rep.push("associator_naturality", w.defect, tol, w.witness);

    // L, R naturality
    let mut w = Worst::default();
    for f in 0..n {
        let (ua, ub) = (b.unit[b.cells[f].src], b.unit[b.cells[f].tgt]);
        for f2 in b.parallel(f) {
            let (f1, f21) = (b.comp(f, ua), b.comp(f2, ua));
            let lhs = b.left[f2] + b.id2(ua) + b.horiz(f, f2, ua, ua) + b.vert(f1, f21, f2);
            let rhs = b.left[f] + b.vert(f1, f, f2);
            w.see(angle_dist(lhs - rhs), || format!("L at {f} ⇒ {f2}"));
            let (uf, uf2) = (b.comp(ub, f), b.comp(ub, f2));
            let lhs = b.right[f2] + b.id2(ub) + b.horiz(ub, ub, f, f2) + b.vert(uf, uf2, f2);
            let rhs = b.right[f] + b.vert(uf, f, f2);
            w.see(angle_dist(lhs - rhs), || format!("R at {f} ⇒ {f2}"));
        }
    }
    rep.push("unit_naturality", w.defect, tol, w.witness);

    // pentagon
    let mut w = Worst::default();
    for &(h, g, f) in &triples {
        for k in 0..n {
            if b.cells[k].src != b.cells[h].tgt {
                continue;
            }
            let d = pentagon_defect(b, k, h, g, f);
            w.see(d, || format!("pentagon at 1-cells k={k}, h={h}, g={g}, f={f}"));
        }
    }
    rep.push("pentagon", w.defect, tol, w.witness);

    // triangle: (1_β ∗ R_α)∘a(β,1,α) = L_β ∗ 1_α
    let mut w = Worst::default();
    for &(beta, alpha) in &comp {
        let u = b.unit[b.cells[alpha].tgt];
        let (b1, ua) = (b.comp(beta, u), b.comp(u, alpha));
        let (b1_a, b_1a, ba) = (b.comp(b1, alpha), b.comp(beta, ua), b.comp(beta, alpha));
        let whisk = b.hcomp(beta, beta, ua, alpha, b.id2(beta), b.right[alpha]);
        let lhs = b.vcomp(b1_a, b_1a, ba, whisk, b.assoc(beta, u, alpha));
        let rhs = b.hcomp(b1, beta, alpha, alpha, b.left[beta], b.id2(alpha));
        w.see(angle_dist(lhs - rhs), || format!("triangle at β={beta}, α={alpha}"));
    }
    rep.push("triangle", w.defect, tol, w.witness);

    // 1-cells invertible up to 2-cells
    let mut missing = None;
    for f in 0..n {
        let (a, c) = (b.cells[f].src, b.cells[f].tgt);
        let ok = (0..n).any(|g| {
            b.cells[g].src == c
                && b.cells[g].tgt == a
                && b.hom(b.comp(g, f), b.unit[a])
                && b.hom(b.comp(f, g), b.unit[c])
        });
        if !ok {
            missing = Some(format!("1-cell {f} has no weak inverse"));
            break;
        }
    }
    rep.push_flag("one_cell_inverses", missing.is_none(), missing);
    rep
}

/// Angle between the two pentagon composites ((kh)g)f ⇒ k(h(gf)).
pub fn pentagon_defect(b: &Bicat, k: usize, h: usize, g: usize, f: usize) -> f64 {
    let (kh, hg, gf) = (b.comp(k, h), b.comp(h, g), b.comp(g, f));
    let (kh_g, k_hg, h_gf, hg_f) = (b.comp(kh, g), b.comp(k, hg), b.comp(h, gf), b.comp(hg, f));
    let m1 = b.comp(kh_g, f);
    let m2 = b.comp(k_hg, f);
    let m3 = b.comp(k, hg_f);
    let m4 = b.comp(k, h_gf);
    let m5 = b.comp(kh, gf);
    let a1 = b.hcomp(kh_g, k_hg, f, f, b.assoc(k, h, g), b.id2(f));
    let a2 = b.assoc(k, hg, f);
    let a3 = b.hcomp(k, k, hg_f, h_gf, b.id2(k), b.assoc(h, g, f));
    let lhs = b.vcomp(m1, m3, m4, a3, b.vcomp(m1, m2, m3, a2, a1));
    let rhs = b.vcomp(m1, m5, m4, b.assoc(k, h, gf), b.assoc(kh, g, f));
    angle_dist(lhs - rhs)
}

/// One object, 1-cells the elements of a finite group given by its table,
/// identity 2-cells only (each 1-cell in its own class).
pub fn group_bicat(table: &[Vec<usize>], identity: usize) -> Bicat {
    let n = table.len();
    let mut comp = HashMap::new();
    for g in 0..n {
        for f in 0..n {
            comp.insert([g, f], table[g][f]);
        }
    }
    Bicat {
        objects: vec!["*".into()],
        cells: (0..n).map(|i| Cell1 { src: 0, tgt: 0, label: format!("g{i}") }).collect(),
        class: (0..n).collect(),
        comp,
        unit: vec![identity],
        left: vec![0.0; n],
        right: vec![0.0; n],
        ..Default::default()
    }
}

// ---- JSON ----

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BicatJson {
    pub objects: Vec<String>,
    pub cells: Vec<Cell1>,
    pub class: Vec<usize>,
    pub comp: BTreeMap<String, usize>,
    #[serde(default)]
    pub vert: BTreeMap<String, f64>,
    #[serde(default)]
    pub horiz: BTreeMap<String, f64>,
    #[serde(default)]
    pub assoc: BTreeMap<String, f64>,
    pub unit: Vec<usize>,
    /// Absent L/R are synthesized.
    #[serde(default)]
    pub left: Option<Vec<f64>>,
    #[serde(default)]
    pub right: Option<Vec<f64>>,
}

fn keys<const N: usize>(m: &HashMap<[usize; N], f64>) -> BTreeMap<String, f64> {
    m.iter()
        .filter(|(_, v)| **v != 0.0)
        .map(|(k, v)| (face_key(&k.map(|x| x as u32)), *v))
        .collect()
}

fn unkey<const N: usize>(s: &str) -> Result<[usize; N], String> {
    let v = parse_face_key(s).ok_or_else(|| format!("bad key {s:?}"))?;
    let v: Vec<usize> = v.into_iter().map(|x| x as usize).collect();
    v.try_into().map_err(|_| format!("key {s:?} needs {N} entries"))
}

fn unkeys<const N: usize>(m: &BTreeMap<String, f64>) -> Result<HashMap<[usize; N], f64>, String> {
    m.iter().map(|(k, v)| Ok((unkey::<N>(k)?, *v))).collect()
}

impl BicatJson {
    pub fn from_bicat(b: &Bicat) -> Self {
        BicatJson {
            objects: b.objects.clone(),
            cells: b.cells.clone(),
            class: b.class.clone(),
            comp: b.comp.iter().map(|(k, v)| (face_key(&k.map(|x| x as u32)), *v)).collect(),
            vert: keys(&b.vert),
            horiz: keys(&b.horiz),
            assoc: keys(&b.assoc),
            unit: b.unit.clone(),
            left: (!b.synthesized_units).then(|| b.left.clone()),
            right: (!b.synthesized_units).then(|| b.right.clone()),
        }
    }

    pub fn build(&self) -> Result<Bicat, String> {
        let mut comp = HashMap::new();
        for (k, &v) in &self.comp {
            comp.insert(unkey::<2>(k)?, v);
        }
        let mut b = Bicat {
            objects: self.objects.clone(),
            cells: self.cells.clone(),
            class: self.class.clone(),
            vert: unkeys(&self.vert)?,
            comp,
            horiz: unkeys(&self.horiz)?,
            assoc: unkeys(&self.assoc)?,
            unit: self.unit.clone(),
            left: vec![0.0; self.cells.len()],
            right: vec![0.0; self.cells.len()],
            synthesized_units: false,
        };
        match (&self.left, &self.right) {
            (Some(l), Some(r)) => {
                b.left = l.clone();
                b.right = r.clone();
            }
            _ => {
                if let Some(e) = structure_errors(&b) {
                    return Err(e);
                }
                b.synthesize_units();
            }
        }
        Ok(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cyclic(n: usize) -> Vec<Vec<usize>> {
        (0..n).map(|g| (0..n).map(|f| (g + f) % n).collect()).collect()
    }

    fn s3() -> Vec<Vec<usize>> {
        // permutations of {0,1,2} as arrays, composed g∘f
        let perms: [[usize; 3]; 6] = [[0, 1, 2], [1, 0, 2], [0, 2, 1], [2, 1, 0], [1, 2, 0], [2, 0, 1]];
        let idx = |p: [usize; 3]| perms.iter().position(|q| *q == p).unwrap();
        perms
            .iter()
            .map(|g| perms.iter().map(|f| idx([g[f[0]], g[f[1]], g[f[2]]])).collect())
            .collect()
    }

    #[test]
    fn finite_groups_pass() {
        for t in [cyclic(1), cyclic(4), s3()] {
            let rep = check_bicat(&group_bicat(&t, 0), 1e-12);
            assert!(rep.pass(), "{rep:?}");
        }
    }

    #[test]
    fn group_units_synthesize_to_zero() {
        let mut b = group_bicat(&s3(), 0);
        b.synthesize_units();
        assert!(b.left.iter().chain(&b.right).all(|&x| x == 0.0));
        assert!(check_bicat(&b, 1e-12).pass());
    }

    #[test]
    fn broken_associator_breaks_pentagon() {
        let b = group_bicat(&cyclic(3), 0).with_assoc_shift([1, 1, 1], 0.25);
        let rep = check_bicat(&b, 1e-9);
        let p = rep.get("pentagon").unwrap();
        assert!(!p.pass);
        assert!(p.witness.as_ref().unwrap().contains("pentagon at 1-cells"));
    }

    #[test]
    fn missing_composite_is_structural() {
        let mut b = group_bicat(&cyclic(2), 0);
        b.comp.remove(&[1, 1]);
        let rep = check_bicat(&b, 1e-9);
        assert!(!rep.pass());
        assert_eq!(rep.checks.len(), 1);
    }

    #[test]
    fn json_round_trip() {
        let b = group_bicat(&s3(), 0).with_assoc_shift([1, 2, 3], 0.5);
        let j = serde_json::to_string(&BicatJson::from_bicat(&b)).unwrap();
        let back: BicatJson = serde_json::from_str(&j).unwrap();
        assert_eq!(back.build().unwrap(), b);
    }
}
