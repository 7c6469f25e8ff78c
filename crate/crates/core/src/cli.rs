//! Batch front-end: one JSON report per run.
//!
//! Exit codes: 0 success, 1 validation failure (malformed or
//! invariant-violating input), 2 numeric defect exceeded.

use std::collections::BTreeMap;
use std::path::{Path as FsPath, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde_json::{json, Map, Value};

use crate::bicat::{check_bicat, BicatJson};
use crate::cech::{self, circle_class, cohomology, delta, trivialize_circle, CochainJson, Coeff, ComplexJson};
use crate::descent::{glue_2descent, validate_2descent, TwoDescentJson};
use crate::gerbe::{make_gerbe, make_morphism, GerbeJson};
use crate::path_su2::{self, Cube};
use crate::pontryagin::{compute_p1, degree_oracle, PontError};
use crate::report::Report;
use crate::two_gerbe::{epsilon_class, extract_3cocycle, restrict_to_point, validate_2gerbe, Fin2GerbeJson, SectionChoice};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;

#[derive(Clone, Debug, Parser)]
#[command(name = "gerbe", version, about = "Finite gerbe and 2-gerbe computations with JSON reports")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, Subcommand)]
pub enum Command {
    /// Betti number and torsion of H^k of a complex.
    Cohomology {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        k: usize,
    },
    /// Integer class of a circle-valued cocycle (degree 2 gives the Dixmier-Douady class).
    GerbeClass {
        #[arg(long)]
        complex: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = cech::DEFAULT_TOL)]
        tol: f64,
    },
    /// h with δh = g for a circle cocycle of zero class.
    Trivialize {
        #[arg(long)]
        complex: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = cech::DEFAULT_TOL)]
        tol: f64,
    },
    /// Validate 2-descent data and glue it into a gerbe on the base.
    Glue {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Coherence of a finite bundle 2-gerbe or of a bicategory table.
    CoherenceCheck {
        #[arg(long)]
        input: PathBuf,
        /// JSON list of cover sets; with a 2-gerbe, also extracts its 3-cocycle.
        #[arg(long)]
        cover: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Sampled path 2-groupoid of SU(2): ν normalization and pentagon integrals.
    Pi2Demo {
        #[arg(long, default_value_t = 32)]
        grid: usize,
        #[arg(long, default_value_t = 5e-3)]
        tol: f64,
        /// Number of random geodesic quadruples.
        #[arg(long, default_value_t = 20)]
        count: usize,
    },
    /// First Pontryagin class of the clutched SU(2) bundle of degree k on S⁴.
    Pontryagin {
        #[arg(long, allow_hyphen_values = true)]
        k: i64,
        #[arg(long, default_value_t = 24)]
        grid: usize,
        #[arg(long, default_value_t = 1e-2)]
        tol: f64,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Cohomology { .. } => "cohomology",
            Command::GerbeClass { .. } => "gerbe-class",
            Command::Trivialize { .. } => "trivialize",
            Command::Glue { .. } => "glue",
            Command::CoherenceCheck { .. } => "coherence-check",
            Command::Pi2Demo { .. } => "pi2-demo",
            Command::Pontryagin { .. } => "pontryagin",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub code: i32,
    pub report: Value,
}

impl Outcome {
    /// The report with its `timings` removed; equal across runs with one config.
    pub fn stable(&self) -> Value {
        let mut v = self.report.clone();
        if let Some(m) = v.as_object_mut() {
            m.remove("timings");
        }
        v
    }
}

/// A failed run: exit code and message.
struct Fail(i32, String);

fn invalid(e: impl std::fmt::Display) -> Fail {
    Fail(EXIT_INVALID, e.to_string())
}

#[derive(Default)]
struct Body {
    fields: Map<String, Value>,
    defects: BTreeMap<String, f64>,
    checks: Report,
    timings: BTreeMap<String, f64>,
    /// Exit code when every step succeeded; a failed check may raise it.
    code: i32,
}

impl Body {
    fn set(&mut self, k: &str, v: impl serde::Serialize) {
        self.fields.insert(k.into(), serde_json::to_value(v).expect("serializable"));
    }

    fn defect(&mut self, name: &str, d: f64) {
        self.defects.insert(name.into(), d);
    }

    fn absorb(&mut self, r: Report) {
        for c in r.checks {
            let d = self.defects.entry(c.name.clone()).or_insert(0.0);
            *d = d.max(c.defect);
            self.checks.checks.push(c);
        }
    }
}

fn read_json<T: DeserializeOwned>(p: &FsPath) -> Result<T, Fail> {
    let s = std::fs::read_to_string(p).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
    serde_json::from_str(&s).map_err(|e| invalid(format!("{}: {e}", p.display())))
}

fn load_cochain(complex: &FsPath, input: &FsPath) -> Result<cech::Cochain, Fail> {
    let cx: ComplexJson = read_json(complex)?;
    let cx = Arc::new(cx.build().map_err(invalid)?);
    let cj: CochainJson = read_json(input)?;
    cj.build(cx).map_err(invalid)
}

fn check_tol(tol: f64) -> Result<(), Fail> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("tol must be positive, got {tol}")))
    }
}

fn check_grid(n: usize) -> Result<(), Fail> {
    if n >= 8 {
        Ok(())
    } else {
        Err(invalid(format!("grid must be at least 8, got {n}")))
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

pub fn run(cfg: &RunConfig) -> Outcome {
    let t0 = Instant::now();
    let mut body = Body::default();
    let res = dispatch(cfg, &mut body);
    let (code, error) = match res {
        Ok(()) => (body.code, None),
        Err(Fail(c, m)) => (c, Some(m)),
    };
    body.timings.insert("total_ms".into(), ms(t0));
    let mut out = Map::new();
    out.insert("command".into(), json!(cfg.command.name()));
    out.insert("version".into(), json!(VERSION));
    out.insert("seed".into(), json!(cfg.seed));
    let status = match code {
        EXIT_OK => "ok",
        EXIT_INVALID => "validation_failure",
        _ => "numeric_defect",
    };
    out.insert("status".into(), json!(status));
    out.insert("defects".into(), json!(body.defects));
    out.insert("checks".into(), serde_json::to_value(&body.checks.checks).expect("serializable"));
    for (k, v) in body.fields {
        out.insert(k, v);
    }
    if let Some(e) = error {
        out.insert("error".into(), json!(e));
    }
    out.insert("timings".into(), json!(body.timings));
    Outcome { code, report: Value::Object(out) }
}

/// Serializes the report, writes it to `cfg.output` or stdout, and returns the exit code.
pub fn emit(cfg: &RunConfig, o: &Outcome) -> std::io::Result<i32> {
    let s = serde_json::to_string_pretty(&o.report).expect("serializable");
    match &cfg.output {
        Some(p) => std::fs::write(p, s + "\n")?,
        None => println!("{s}"),
    }
    Ok(o.code)
}

fn dispatch(cfg: &RunConfig, b: &mut Body) -> Result<(), Fail> {
    match &cfg.command {
        Command::Cohomology { input, k } => {
            let cx: ComplexJson = read_json(input)?;
            let cx = cx.build().map_err(invalid)?;
            let h = cohomology(&cx, *k).map_err(invalid)?;
            b.set("betti", h.betti);
            b.set("torsion", &h.torsion);
            b.set("degree", k);
        }
        Command::GerbeClass { complex, input, tol } => {
            check_tol(*tol)?;
            let g = load_cochain(complex, input)?;
            if g.coeff() != Coeff::Circle {
                return Err(invalid("gerbe-class needs a circle-valued cochain"));
            }
            b.defect("cocycle", delta(&g).max_abs());
            let cls = circle_class(&g, *tol).map_err(invalid)?;
            b.set("class", cls);
        }
        Command::Trivialize { complex, input, tol } => {
            check_tol(*tol)?;
            let g = load_cochain(complex, input)?;
            if g.coeff() != Coeff::Circle {
                return Err(invalid("trivialize needs a circle-valued cochain"));
            }
            let h = trivialize_circle(&g, *tol).map_err(invalid)?;
            let dh = delta(&h);
            let gv = g.as_circle().map_err(invalid)?;
            let res = dh.as_circle().map_err(invalid)?.iter().zip(gv).map(|(a, b)| cech::angle_dist(a - b)).fold(0.0, f64::max);
            b.defect("residual", res);
            b.set("potential", CochainJson::from_cochain(&h));
        }
        Command::Glue { input, tol } => {
            check_tol(*tol)?;
            let dj: TwoDescentJson = read_json(input)?;
            let d = dj.build().map_err(invalid)?;
            let rep = validate_2descent(&d, *tol);
            let ok = rep.pass();
            b.absorb(rep);
            if !ok {
                b.code = EXIT_INVALID;
                return Ok(());
            }
            let g = glue_2descent(&d).map_err(invalid)?;
            // the glued data must pass the constructors on their own
            let c = g.gerbe.cocycle().clone();
            let regl = make_gerbe(g.gerbe.surj.clone(), c).map(|_| ()).map_err(|e| e.to_string());
            let mut rep = Report::default();
            rep.push_flag("glued_gerbe", regl.is_ok(), regl.err());
            for (i, chi) in g.chi.iter().enumerate() {
                let lam = chi.lambda_map().clone();
                let r = make_morphism(chi.source.clone(), chi.target.clone(), chi.point_map().clone(), lam);
                rep.push_flag(&format!("chi_{i}"), r.is_ok(), r.err().map(|e| e.to_string()));
            }
            rep.push("xi_psi", g.xi_psi_defect, *tol, None);
            if !rep.pass() {
                b.code = EXIT_NUMERIC;
            }
            b.absorb(rep);
            b.set("gerbe", GerbeJson::from_gerbe(&g.gerbe));
            b.set("origin", &g.origin);
        }
        Command::CoherenceCheck { input, cover, tol } => {
            check_tol(*tol)?;
            let v: Value = read_json(input)?;
            if let Ok(gj) = serde_json::from_value::<Fin2GerbeJson>(v.clone()) {
                let g = gj.build().map_err(invalid)?;
                b.set("kind", "2-gerbe");
                let rep = validate_2gerbe(&g, *tol);
                let ok = rep.pass();
                b.absorb(rep);
                if !ok {
                    b.code = EXIT_INVALID;
                    return Ok(());
                }
                let mut synthesized = vec![];
                for &m in g.surj_x.base() {
                    let bc = restrict_to_point(&g, m).map_err(invalid)?;
                    let mut r = check_bicat(&bc, *tol);
                    for c in &mut r.checks {
                        c.name = format!("point_{m}.{}", c.name);
                    }
                    if !r.pass() {
                        b.code = EXIT_INVALID;
                    }
                    b.absorb(r);
                    synthesized.push(m);
                }
                b.set("synthesized_units_at", synthesized);
                if let Some(p) = cover {
                    let cov: Vec<Vec<u32>> = read_json(p)?;
                    let ch = SectionChoice::canonical(&g, &cov);
                    let e = extract_3cocycle(&g, &cov, &ch).map_err(invalid)?;
                    b.defect("epsilon_cocycle", e.delta_defect);
                    let cls = epsilon_class(&e, (*tol).max(1e-9)).map_err(invalid)?;
                    b.set("class", cls);
                }
            } else {
                let bj: BicatJson = serde_json::from_value(v)
                    .map_err(|e| invalid(format!("neither a 2-gerbe nor a bicategory: {e}")))?;
                let bc = bj.build().map_err(invalid)?;
                b.set("kind", "bicategory");
                let rep = check_bicat(&bc, *tol);
                if !rep.pass() {
                    b.code = EXIT_INVALID;
                }
                b.absorb(rep);
            }
        }
        Command::Pi2Demo { grid, tol, count } => {
            check_tol(*tol)?;
            check_grid(*grid)?;
            pi2_demo(*grid, *tol, *count, cfg.seed, b)?;
        }
        Command::Pontryagin { k, grid, tol } => {
            check_tol(*tol)?;
            check_grid(*grid)?;
            let t = Instant::now();
            let r = compute_p1(*k, *grid, *tol).map_err(|e| match e {
                PontError::NumericDefectExceeded { .. } | PontError::NoAvoidPoint(..) => Fail(EXIT_NUMERIC, e.to_string()),
                PontError::Path(path_su2::PathError::NoUnhitPoint) => Fail(EXIT_NUMERIC, e.to_string()),
                _ => invalid(e),
            })?;
            b.timings.insert("compute_p1_ms".into(), ms(t));
            let t = Instant::now();
            let deg = degree_oracle(*k, 32).map_err(invalid)?;
            b.timings.insert("degree_oracle_ms".into(), ms(t));
            b.defect("delta_cocycle", r.delta_defect);
            b.defect("log_integrality", r.integrality_defect);
            b.defect("continuity", r.continuity);
            let sign = if r.class == 0 || deg.round() as i64 == 0 { 0 } else { (r.class * deg.round() as i64).signum() };
            let mut v = serde_json::to_value(&r).expect("serializable");
            let m = v.as_object_mut().expect("object");
            m.remove("elapsed_ms");
            for (key, val) in std::mem::take(m) {
                b.fields.insert(key, val);
            }
            b.set("class_coordinates", json!({"degree": 4, "free": [r.class], "torsion": []}));
            b.set("degree_oracle", deg);
            b.set("sign", sign);
        }
    }
    Ok(())
}

fn pi2_demo(n: usize, tol: f64, count: usize, seed: u64, b: &mut Body) -> Result<(), Fail> {
    let num = |e: path_su2::PathError| match e {
        path_su2::PathError::NoUnhitPoint => Fail(EXIT_NUMERIC, e.to_string()),
        _ => invalid(e),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = Report::default();
    let t = Instant::now();
    let cube = Cube::from_fn(n, path_su2::exp_chart).map_err(num)?;
    let vol = path_su2::integrate_nu_cube(&cube);
    let q = path_su2::random_uquat(&mut rng);
    let inv = (path_su2::integrate_nu_cube(&cube.left_mul(q)) - vol)
        .abs()
        .max((path_su2::integrate_nu_cube(&cube.right_mul(q)) - vol).abs());
    b.timings.insert("nu_ms".into(), ms(t));
    rep.push("nu_normalization", (vol - 1.0).abs(), tol, Some(format!("∫ν = {vol}")));
    rep.push("nu_bi_invariance", inv, tol, None);
    let t = Instant::now();
    let mut pent = vec![];
    for _ in 0..count {
        let x: [path_su2::UQuat; 5] = std::array::from_fn(|_| path_su2::random_uquat(&mut rng));
        let [c45, c34, c23, c12] = path_su2::geodesic_chain(x, n).map_err(num)?;
        pent.push(path_su2::pentagon_defect(&c45, &c34, &c23, &c12).map_err(num)?);
    }
    b.timings.insert("pentagon_ms".into(), ms(t));
    let (worst, at) = pent.iter().enumerate().fold((0.0f64, 0), |(w, a), (i, &d)| if d > w { (d, i) } else { (w, a) });
    rep.push("pentagon", worst, tol, Some(format!("quadruple {at}")));
    if !rep.pass() {
        b.code = EXIT_NUMERIC;
    }
    b.absorb(rep);
    b.set("nu_volume", vol);
    b.set("pentagon_defects", pent);
    b.set("grid", n);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(args: &[&str]) -> RunConfig {
        RunConfig::try_parse_from(std::iter::once("gerbe").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn negative_k_parses() {
        match cfg(&["pontryagin", "--k", "-2"]).command {
            Command::Pontryagin { k, grid, .. } => assert_eq!((k, grid), (-2, 24)),
            c => panic!("{c:?}"),
        }
    }

    #[test]
    fn missing_input_is_a_validation_failure() {
        let c = cfg(&["glue", "--input", "/nonexistent/descent.json", "--seed", "3"]);
        let a = run(&c);
        assert_eq!(a.code, EXIT_INVALID);
        assert_eq!(a.report["status"], "validation_failure");
        assert_eq!(a.report["seed"], 3);
        assert_eq!(a.stable(), run(&c).stable());
    }

    #[test]
    fn bad_tolerance_and_grid() {
        assert_eq!(run(&cfg(&["pi2-demo", "--tol", "0"])).code, EXIT_INVALID);
        assert_eq!(run(&cfg(&["pontryagin", "--k", "1", "--grid", "7"])).code, EXIT_INVALID);
    }
}
