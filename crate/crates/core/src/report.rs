//! Report-style validation results shared by the validators.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub defect: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub checks: Vec<Check>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Report {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    /// Records a check that passes when `defect <= tol`.
    pub fn push(&mut self, name: &str, defect: f64, tol: f64, witness: Option<String>) {
        let pass = defect <= tol;
        self.checks.push(Check {
            name: name.to_string(),
            pass,
            defect,
            witness: if pass { None } else { witness },
        });
    }

    /// Records a structural check with no numeric defect.
    pub fn push_flag(&mut self, name: &str, ok: bool, witness: Option<String>) {
        self.checks.push(Check {
            name: name.to_string(),
            pass: ok,
            defect: if ok { 0.0 } else { 1.0 },
            witness: if ok { None } else { witness },
        });
    }
}

/// Running maximum that remembers where it happened.
#[derive(Clone, Debug, Default)]
pub struct Worst {
    pub defect: f64,
    pub witness: Option<String>,
}

impl Worst {
    pub fn see(&mut self, d: f64, w: impl FnOnce() -> String) {
        if d > self.defect || (self.witness.is_none() && d.is_nan()) {
            self.defect = d;
            self.witness = Some(w());
        }
    }
}
