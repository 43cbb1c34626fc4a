//! Machine-readable run reports. Every command assembles a [`Report`]
//! whose certificates are named residuals with three-valued verdicts:
//! `ok = true` means the residual normalized to the literal zero,
//! `ok = false` means it is definitely nonzero, and `ok = null` means the
//! zero test could not decide (the radical-independence corner). The exit
//! code is derived from the certificates alone: 0 when everything is
//! definitely zero, 1 on a definite failure, 2 when inconclusive.

use crate::expr::{Expr, ZeroTest};
use crate::forms::Form;
use crate::jet::DiffOperator;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Serialize, Clone, Debug)]
pub struct Certificate {
    pub name: String,
    /// Normalized textual residual; the literal `0` on success.
    pub residual: String,
    pub ok: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Serialize, Clone, Debug)]
pub struct Report {
    pub command: String,
    pub engine_version: &'static str,
    pub timing_ms: u128,
    pub inputs: BTreeMap<String, String>,
    pub certificates: Vec<Certificate>,
    pub witnesses: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Three-valued zero verdict for an expression, with the inconclusive
/// reason carried along.
fn expr_verdict(e: &Expr) -> (Option<bool>, Option<String>) {
    match e.zero_test() {
        ZeroTest::Definite(z) => (Some(z), None),
        ZeroTest::Inconclusive(why) => (None, Some(why)),
    }
}

/// Combine per-coefficient verdicts: any definite nonzero wins, then any
/// inconclusive, then definitely zero.
fn combine(parts: impl Iterator<Item = (Option<bool>, Option<String>)>) -> (Option<bool>, Option<String>) {
    let mut verdict = Some(true);
    let mut note = None;
    for (ok, why) in parts {
        match ok {
            Some(false) => return (Some(false), why),
            None => {
                verdict = None;
                if note.is_none() {
                    note = why;
                }
            }
            Some(true) => {}
        }
    }
    (verdict, note)
}

impl Report {
    pub fn new(command: impl Into<String>) -> Self {
        Report {
            command: command.into(),
            engine_version: ENGINE_VERSION,
            timing_ms: 0,
            inputs: BTreeMap::new(),
            certificates: Vec::new(),
            witnesses: BTreeMap::new(),
            verdict: None,
            notes: Vec::new(),
        }
    }

    pub fn input(&mut self, name: &str, value: impl ToString) -> &mut Self {
        self.inputs.insert(name.to_string(), value.to_string());
        self
    }

    pub fn witness(&mut self, name: &str, value: impl ToString) -> &mut Self {
        self.witnesses.insert(name.to_string(), value.to_string());
        self
    }

    pub fn verdict(&mut self, v: impl Into<String>) -> &mut Self {
        self.verdict = Some(v.into());
        self
    }

    pub fn note(&mut self, n: impl Into<String>) -> &mut Self {
        self.notes.push(n.into());
        self
    }

    pub fn push(&mut self, c: Certificate) -> &mut Self {
        self.certificates.push(c);
        self
    }

    /// Certificate whose residual is an expression; verdict from the
    /// three-valued zero test.
    pub fn cert_expr(&mut self, name: &str, residual: &Expr) -> &mut Self {
        let (ok, note) = expr_verdict(residual);
        self.push(Certificate {
            name: name.to_string(),
            residual: residual.to_string(),
            ok,
            note,
        })
    }

    /// Certificate whose residual is a differential form; each coefficient
    /// is zero-tested independently.
    pub fn cert_form(&mut self, name: &str, residual: &Form) -> &mut Self {
        let (ok, note) = combine(residual.terms().map(|(_, c)| expr_verdict(c)));
        self.push(Certificate {
            name: name.to_string(),
            residual: residual.to_string(),
            ok,
            note,
        })
    }

    /// Certificate whose residual is an operator; each coefficient is
    /// zero-tested independently.
    pub fn cert_op(&mut self, name: &str, residual: &DiffOperator) -> &mut Self {
        let (ok, note) = combine(residual.terms().map(|(_, c)| expr_verdict(c)));
        self.push(Certificate {
            name: name.to_string(),
            residual: residual.to_string(),
            ok,
            note,
        })
    }

    /// Certificate decided outside the residual calculus (e.g. structural
    /// checks); the caller supplies the verdict and a describing residual.
    pub fn cert_bool(&mut self, name: &str, ok: bool, residual: impl ToString) -> &mut Self {
        self.push(Certificate {
            name: name.to_string(),
            residual: residual.to_string(),
            ok: Some(ok),
            note: None,
        })
    }

    pub fn all_ok(&self) -> bool {
        self.certificates.iter().all(|c| c.ok == Some(true))
    }

    /// 0 = every certificate definitely zero; 1 = at least one definite
    /// failure; 2 = no definite failure but at least one inconclusive test.
    pub fn exit_code(&self) -> i32 {
        if self.certificates.iter().any(|c| c.ok == Some(false)) {
            1
        } else if self.certificates.iter().any(|c| c.ok.is_none()) {
            2
        } else {
            0
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "jetvar {} (engine {})", self.command, self.engine_version);
        if !self.inputs.is_empty() {
            let _ = writeln!(out, "inputs:");
            for (k, v) in &self.inputs {
                let _ = writeln!(out, "  {k} = {v}");
            }
        }
        if !self.certificates.is_empty() {
            let _ = writeln!(out, "certificates:");
            for c in &self.certificates {
                let tag = match c.ok {
                    Some(true) => "ok",
                    Some(false) => "FAIL",
                    None => "??",
                };
                let _ = writeln!(out, "  [{tag}] {}: {}", c.name, c.residual);
                if let Some(n) = &c.note {
                    let _ = writeln!(out, "        note: {n}");
                }
            }
        }
        if !self.witnesses.is_empty() {
            let _ = writeln!(out, "witnesses:");
            for (k, v) in &self.witnesses {
                let _ = writeln!(out, "  {k} = {v}");
            }
        }
        if let Some(v) = &self.verdict {
            let _ = writeln!(out, "verdict: {v}");
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        let _ = writeln!(out, "elapsed: {} ms", self.timing_ms);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse::{parse_expr, Declarations};

    fn e(src: &str) -> Expr {
        parse_expr(src, &Declarations::new()).unwrap()
    }

    #[test]
    fn exit_codes_follow_certificates() {
        let mut r = Report::new("demo");
        r.cert_expr("a", &Expr::zero());
        assert_eq!(r.exit_code(), 0);
        assert!(r.all_ok());
        r.push(Certificate {
            name: "b".into(),
            residual: "?".into(),
            ok: None,
            note: None,
        });
        assert_eq!(r.exit_code(), 2);
        r.cert_expr("c", &e("u_x"));
        assert_eq!(r.exit_code(), 1);
    }

    #[test]
    fn json_shape_has_certificate_fields() {
        let mut r = Report::new("demo");
        r.input("K", "u_xxx");
        r.cert_expr("closure", &Expr::zero());
        r.witness("Q", "-(1/2)*u_x");
        let json = r.to_json();
        for needle in [
            "\"command\": \"demo\"",
            "\"name\": \"closure\"",
            "\"residual\": \"0\"",
            "\"ok\": true",
            "\"engine_version\"",
        ] {
            assert!(json.contains(needle), "missing {needle} in {json}");
        }
    }

    #[test]
    fn text_rendering_tags_failures() {
        let mut r = Report::new("demo");
        r.cert_expr("zero", &Expr::zero());
        r.cert_expr("bad", &e("u"));
        let text = r.render_text();
        assert!(text.contains("[ok] zero: 0"));
        assert!(text.contains("[FAIL] bad: u"));
    }
}
