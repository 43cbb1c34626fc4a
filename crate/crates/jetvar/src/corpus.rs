//! Data-driven regression corpus.
//!
//! A corpus file is a sequence of sectioned cases:
//!
//! ```text
//! # comment
//! [case] reciprocal-cubic-compat
//! [declare] param c1;
//! [operator] D0 = (1/u) @ Dx^3 @ (1/u)
//! [density] H1 = -(1/2)*u_x^2/u^3
//! [base] u = 1, u_x = 1
//! [check] compat
//! [expect] compatible = true
//! [expect] H2 ~ (1/2)*u_xx^2/u^5 - (15/8)*u_x^4/u^7
//! ```
//!
//! Every named input is kept as source text and parsed when the case
//! runs, so malformed payloads surface as failing certificates instead
//! of aborting the whole corpus.  A line that does not open a new
//! `[section]` continues the previous payload, which keeps long form
//! literals readable.
//!
//! `[expect] key = value` demands exact equality; `key ~ value` accepts
//! the looser equivalence natural for that key (densities modulo total
//! x-derivatives and fiber-free terms, characteristics modulo
//! variations).  Expectation keys a check kind does not recognise fail
//! the case rather than being silently ignored.

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::cohomology::{
    conservation_characteristic, helmholtz_and_lagrangian, lambda_invariant, omega_from_operator,
    ConservationVerdict,
};
use crate::expr::parse::{parse_expr, parse_program, Declarations};
use crate::expr::Expr;
use crate::forms::{d_horizontal, d_vertical, euler_lagrange, parse_form, BasePoint, Form};
use crate::jet::SpaceTag;
use crate::hamtools::{
    bi_hamiltonian_pipeline, compatibility_h2, cylindrical_kdv_experiment, potentialize,
};
use crate::jet::{frechet, DiffOperator, EqContext};
use crate::oplab::{fot_test, hamiltonian_of, is_symplectic, verify_variational, FotVerdict};
use crate::report::{Certificate, Report};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{origin}:{line}: {msg}")]
    Parse {
        origin: String,
        line: usize,
        msg: String,
    },
    #[error("duplicate case name `{0}`")]
    DuplicateCase(String),
}

/// One expectation line: `key = value` (exact) or `key ~ value` (up to
/// the equivalence natural for the key).
#[derive(Clone, Debug)]
pub struct Expectation {
    pub key: String,
    pub value: String,
    pub exact: bool,
}

/// A parsed case: named source payloads plus the check kind that
/// interprets them.
#[derive(Clone, Debug)]
pub struct CorpusCase {
    pub name: String,
    pub origin: String,
    pub check: String,
    pub declare_src: String,
    pub exprs: BTreeMap<String, String>,
    pub operators: BTreeMap<String, String>,
    pub forms: BTreeMap<String, String>,
    pub base_src: Option<String>,
    pub depth: u32,
    pub sign: i64,
    pub space: SpaceTag,
    pub expects: Vec<Expectation>,
}

impl CorpusCase {
    fn new(name: String, origin: String) -> Self {
        CorpusCase {
            name,
            origin,
            check: String::new(),
            declare_src: String::new(),
            exprs: BTreeMap::new(),
            operators: BTreeMap::new(),
            forms: BTreeMap::new(),
            base_src: None,
            depth: 1,
            sign: 1,
            space: SpaceTag::Sb,
            expects: Vec::new(),
        }
    }
}

fn split_named(payload: &str) -> Option<(String, String)> {
    let (name, rest) = payload.split_once('=')?;
    let name = name.trim();
    if name.is_empty() || !name.chars().all(|c| c.is_alphanumeric() || c == '_') {
        return None;
    }
    Some((name.to_string(), rest.trim().to_string()))
}

/// Parse a corpus file into cases.  `origin` labels error messages.
pub fn parse_cases(origin: &str, text: &str) -> Result<Vec<CorpusCase>, CorpusError> {
    let err = |line: usize, msg: String| CorpusError::Parse {
        origin: origin.to_string(),
        line,
        msg,
    };
    // Stitch continuation lines onto their section line first.
    let mut stitched: Vec<(usize, String)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line.starts_with('[') {
            stitched.push((idx + 1, line.to_string()));
        } else if let Some(last) = stitched.last_mut() {
            last.1.push(' ');
            last.1.push_str(line);
        } else {
            return Err(err(idx + 1, format!("expected `[section]`, found `{line}`")));
        }
    }

    let mut cases: Vec<CorpusCase> = Vec::new();
    for (lineno, line) in stitched {
        let close = line
            .find(']')
            .ok_or_else(|| err(lineno, "unterminated section header".into()))?;
        let section = &line[1..close];
        let payload = line[close + 1..].trim().to_string();
        if section == "case" {
            if payload.is_empty() {
                return Err(err(lineno, "`[case]` needs a name".into()));
            }
            cases.push(CorpusCase::new(payload, origin.to_string()));
            continue;
        }
        let case = cases
            .last_mut()
            .ok_or_else(|| err(lineno, format!("`[{section}]` before any `[case]`")))?;
        match section {
            "declare" => {
                if !case.declare_src.is_empty() {
                    case.declare_src.push(' ');
                }
                case.declare_src.push_str(&payload);
            }
            "equation" | "density" | "expr" => {
                let (name, src) = split_named(&payload)
                    .ok_or_else(|| err(lineno, format!("`[{section}]` needs `NAME = source`")))?;
                case.exprs.insert(name, src);
            }
            "operator" => {
                let (name, src) = split_named(&payload)
                    .ok_or_else(|| err(lineno, "`[operator]` needs `NAME = source`".into()))?;
                case.operators.insert(name, src);
            }
            "form" => {
                let (name, src) = split_named(&payload)
                    .ok_or_else(|| err(lineno, "`[form]` needs `NAME = source`".into()))?;
                case.forms.insert(name, src);
            }
            "base" => case.base_src = Some(payload),
            "depth" => {
                case.depth = payload
                    .parse()
                    .map_err(|_| err(lineno, format!("bad depth `{payload}`")))?;
            }
            "sign" => {
                case.sign = payload
                    .parse()
                    .map_err(|_| err(lineno, format!("bad sign `{payload}`")))?;
            }
            "space" => {
                case.space = match payload.as_str() {
                    "sb" => SpaceTag::Sb,
                    "free" => SpaceTag::Free,
                    "eqn" => SpaceTag::Eqn,
                    other => return Err(err(lineno, format!("unknown space `{other}`"))),
                };
            }
            "check" => case.check = payload,
            "expect" => {
                // `key = value` before `key ~ value`: `=` may appear
                // inside the value, `~` may not.
                let (key, value, exact) = if let Some((k, v)) = payload.split_once('~') {
                    if k.contains('=') {
                        let (k2, v2) = payload.split_once('=').unwrap();
                        (k2, v2, true)
                    } else {
                        (k, v, false)
                    }
                } else if let Some((k, v)) = payload.split_once('=') {
                    (k, v, true)
                } else {
                    return Err(err(lineno, "`[expect]` needs `key = value` or `key ~ value`".into()));
                };
                case.expects.push(Expectation {
                    key: key.trim().to_string(),
                    value: value.trim().to_string(),
                    exact,
                });
            }
            other => return Err(err(lineno, format!("unknown section `[{other}]`"))),
        }
    }
    for case in &cases {
        if case.check.is_empty() {
            return Err(CorpusError::Parse {
                origin: origin.to_string(),
                line: 0,
                msg: format!("case `{}` has no `[check]`", case.name),
            });
        }
    }
    Ok(cases)
}

/// Built-in cases exercised by `corpus run` and the integration suite.
pub fn bundled() -> &'static [(&'static str, &'static str)] {
    &[
        (
            "first-order.case",
            include_str!("../corpus/first-order.case"),
        ),
        (
            "variational-witnesses.case",
            include_str!("../corpus/variational-witnesses.case"),
        ),
        (
            "schwarzian.case",
            include_str!("../corpus/schwarzian.case"),
        ),
        (
            "conservation.case",
            include_str!("../corpus/conservation.case"),
        ),
        (
            "hamiltonian.case",
            include_str!("../corpus/hamiltonian.case"),
        ),
        (
            "reciprocal-cubic.case",
            include_str!("../corpus/reciprocal-cubic.case"),
        ),
        (
            "triple-potential.case",
            include_str!("../corpus/triple-potential.case"),
        ),
        (
            "cylindrical.case",
            include_str!("../corpus/cylindrical.case"),
        ),
    ]
}

struct Ctx {
    decls: Declarations,
    expects: Vec<Expectation>,
}

impl Ctx {
    fn take(&mut self, key: &str) -> Option<Expectation> {
        let pos = self.expects.iter().position(|e| e.key == key)?;
        Some(self.expects.remove(pos))
    }
}

type RunResult = Result<(), String>;

fn show<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn need<'a>(map: &'a BTreeMap<String, String>, what: &str, name: &str) -> Result<&'a str, String> {
    map.get(name)
        .map(|s| s.as_str())
        .ok_or_else(|| format!("missing [{what}] {name}"))
}

impl CorpusCase {
    fn expr(&self, ctx: &Ctx, name: &str) -> Result<Expr, String> {
        parse_expr(need(&self.exprs, "expr", name)?, &ctx.decls).map_err(show)
    }

    fn operator(&self, ctx: &Ctx, name: &str, space: SpaceTag) -> Result<DiffOperator, String> {
        DiffOperator::parse(need(&self.operators, "operator", name)?, &ctx.decls, space)
            .map_err(show)
    }

    fn form(&self, ctx: &Ctx, name: &str, space: SpaceTag) -> Result<Form, String> {
        parse_form(need(&self.forms, "form", name)?, &ctx.decls, space).map_err(show)
    }

    fn base(&self) -> Result<BasePoint, String> {
        match &self.base_src {
            Some(src) => BasePoint::parse(src).map_err(show),
            None => Ok(BasePoint::origin()),
        }
    }

    fn context(&self, ctx: &Ctx) -> Result<EqContext, String> {
        EqContext::new(self.expr(ctx, "K")?).map_err(show)
    }
}

fn parse_value_expr(ctx: &Ctx, ex: &Expectation) -> Result<Expr, String> {
    parse_expr(&ex.value, &ctx.decls)
        .map_err(|e| format!("expectation `{}`: {e}", ex.key))
}

/// `= value`: certificate on the literal difference.  `~ value`:
/// certificate on the Euler–Lagrange derivative of the difference, the
/// equivalence of densities.
fn expect_density(rep: &mut Report, ctx: &Ctx, ex: &Expectation, actual: &Expr) -> RunResult {
    let expected = parse_value_expr(ctx, ex)?;
    let diff = actual.sub(&expected);
    if ex.exact {
        rep.cert_expr(&format!("{} matches expectation", ex.key), &diff);
    } else {
        let residual = euler_lagrange(&diff, SpaceTag::Sb).map_err(show)?;
        rep.cert_expr(&format!("{} matches expectation up to null terms", ex.key), &residual);
    }
    Ok(())
}

fn expect_expr_exact(rep: &mut Report, ctx: &Ctx, ex: &Expectation, actual: &Expr) -> RunResult {
    let expected = parse_value_expr(ctx, ex)?;
    rep.cert_expr(&format!("{} matches expectation", ex.key), &actual.sub(&expected));
    Ok(())
}

fn expect_operator(rep: &mut Report, ctx: &Ctx, ex: &Expectation, actual: &DiffOperator) -> RunResult {
    let expected = DiffOperator::parse(&ex.value, &ctx.decls, actual.space())
        .map_err(|e| format!("expectation `{}`: {e}", ex.key))?;
    let diff = actual.sub(&expected).map_err(show)?;
    rep.cert_op(&format!("{} matches expectation", ex.key), &diff);
    Ok(())
}

fn expect_bool(rep: &mut Report, ex: &Expectation, actual: bool) -> RunResult {
    let expected: bool = ex
        .value
        .parse()
        .map_err(|_| format!("expectation `{}`: bad bool `{}`", ex.key, ex.value))?;
    rep.cert_bool(
        &format!("{} matches expectation", ex.key),
        actual == expected,
        format!("{} = {actual}", ex.key),
    );
    Ok(())
}

fn expect_verdict(rep: &mut Report, ex: &Expectation, actual: &str) {
    rep.cert_bool(
        "verdict matches expectation",
        actual == ex.value,
        format!("verdict = {actual}"),
    );
}

/// Run one case and report each verified identity as a certificate.
pub fn run_case(case: &CorpusCase) -> Report {
    let mut rep = Report::new(format!("corpus:{}", case.name));
    rep.input("check", &case.check);
    for (name, src) in &case.exprs {
        rep.input(name, src);
    }
    for (name, src) in &case.operators {
        rep.input(name, src);
    }
    for (name, src) in &case.forms {
        rep.input(name, src);
    }

    let decls = match parse_program(&format!("{} 0", case.declare_src)) {
        Ok((decls, _)) => decls,
        Err(e) => {
            rep.cert_bool("declarations", false, show(e));
            return rep;
        }
    };
    let mut ctx = Ctx {
        decls,
        expects: case.expects.clone(),
    };
    if let Err(msg) = run_checked(case, &mut ctx, &mut rep) {
        rep.cert_bool("engine", false, msg);
        return rep;
    }
    for left in &ctx.expects {
        rep.cert_bool(
            &format!("expectation `{}`", left.key),
            false,
            "unrecognised for this check kind",
        );
    }
    rep
}

fn run_checked(case: &CorpusCase, ctx: &mut Ctx, rep: &mut Report) -> RunResult {
    match case.check.as_str() {
        "variational" => {
            let op = case.operator(ctx, "E", SpaceTag::Sb)?;
            let eq = case.context(ctx)?;
            let q = case.expr(ctx, "Q")?;
            let l = case.expr(ctx, "L")?;
            match verify_variational(&op, &eq, &q, &l) {
                Ok(w) => {
                    rep.cert_op("operator identity", &w.operator_residual);
                    rep.cert_expr("density identity", &w.density_residual);
                }
                Err(crate::oplab::OplabError::ResidualNonzero { name, residual }) => {
                    rep.cert_bool(name, false, residual);
                }
                Err(other) => return Err(show(other)),
            }
        }
        "first-order" => {
            let eq = case.context(ctx)?;
            let out = fot_test(&eq).map_err(show)?;
            let verdict = match &out.verdict {
                FotVerdict::NoOperatorNotClosed => "no_operator_not_closed",
                FotVerdict::NoOperatorNontrivial => "no_operator_nontrivial",
                FotVerdict::OperatorFound => "operator_found",
                FotVerdict::Inconclusive(_) => "inconclusive",
            };
            rep.witness("kappa", &out.kappa);
            if let Some(ex) = ctx.take("verdict") {
                expect_verdict(rep, &ex, verdict);
            }
            if let Some(cc) = &out.closure_certificate {
                rep.cert_form("produced operator two-form closure", cc);
            }
            if let Some(ex) = ctx.take("R") {
                match &out.r {
                    Some(r) => expect_expr_exact(rep, ctx, &ex, r)?,
                    None => {
                        rep.cert_bool("R matches expectation", false, "no factor produced");
                    }
                }
            }
            if let Some(ex) = ctx.take("operator") {
                match &out.operator {
                    Some(op) => expect_operator(rep, ctx, &ex, op)?,
                    None => {
                        rep.cert_bool("operator matches expectation", false, "no operator produced");
                    }
                }
            }
        }
        "canonical" => {
            let op = case.operator(ctx, "E", SpaceTag::Eqn)?;
            let eq = case.context(ctx)?;
            let class = omega_from_operator(&op, &eq).map_err(show)?;
            rep.cert_form("skewness", &class.skew_residual);
            if let Some(ex) = ctx.take("closed") {
                expect_bool(rep, &ex, class.is_closed())?;
            } else {
                rep.cert_form("horizontal closure", &class.closure_residual);
            }
            rep.witness("omega", &class.omega);
            if let Some(ex) = ctx.take("omega") {
                let expected = parse_form(&ex.value, &ctx.decls, SpaceTag::Eqn)
                    .map_err(|e| format!("expectation `omega`: {e}"))?;
                let diff = class.omega.sub(&expected).map_err(show)?;
                rep.cert_form("omega matches expectation", &diff);
            }
        }
        "symplectic" => {
            let op = case.operator(ctx, "S", SpaceTag::Sb)?;
            let base = case.base()?;
            let out = is_symplectic(&op, &base).map_err(show)?;
            let expected = ctx.take("symplectic");
            // a case that explicitly expects failure records the
            // residuals as witnesses instead of failing certificates
            if expected.as_ref().map(|e| e.value == "true").unwrap_or(true) {
                rep.cert_op("skew residual", &out.skew_residual);
                if let Some(cr) = &out.closure_residual {
                    rep.cert_form("two-form closure", cr);
                }
            } else {
                rep.witness("skew_residual", &out.skew_residual);
                if let Some(r) = &out.reason {
                    rep.note(r.clone());
                }
            }
            if let Some(ex) = expected {
                expect_bool(rep, &ex, out.is_symplectic)?;
            }
            if let Some(p) = &out.potential {
                rep.witness("potential", p);
            }
            if let Some(note) = &out.potential_note {
                rep.note(note.clone());
            }
            if let Some(ex) = ctx.take("potential") {
                match &out.potential {
                    Some(p) => expect_density(rep, ctx, &ex, p)?,
                    None => {
                        rep.cert_bool("potential matches expectation", false, "no potential produced");
                    }
                }
            }
        }
        "hamiltonian" => {
            let op = case.operator(ctx, "S", SpaceTag::Sb)?;
            let eq = case.context(ctx)?;
            let p = case.expr(ctx, "P")?;
            let base = case.base()?;
            let out = hamiltonian_of(&op, &eq, &p, &base).map_err(show)?;
            let expected = ctx.take("hamiltonian");
            if expected.as_ref().map(|e| e.value == "true").unwrap_or(true) {
                rep.cert_op(
                    "gradient self-adjointness",
                    &out.helmholtz.self_adjointness_residual,
                );
            } else {
                rep.witness(
                    "self_adjointness_residual",
                    &out.helmholtz.self_adjointness_residual,
                );
            }
            if let Some(ex) = expected {
                expect_bool(rep, &ex, out.is_hamiltonian)?;
            }
            if let Some(ex) = ctx.take("scale") {
                let expected: num::BigRational = ex
                    .value
                    .parse()
                    .map_err(|_| format!("expectation `scale`: bad rational `{}`", ex.value))?;
                rep.cert_bool(
                    "scale matches expectation",
                    out.potential_scale == expected,
                    format!("scale = {}", out.potential_scale),
                );
            }
            if let Some(h) = &out.hamiltonian {
                rep.witness("H", h);
            }
            if let Some(ex) = ctx.take("H") {
                match &out.hamiltonian {
                    Some(h) => expect_density(rep, ctx, &ex, h)?,
                    None => {
                        rep.cert_bool("H matches expectation", false, "no density produced");
                    }
                }
            }
        }
        "conservation" => {
            let eq = case.context(ctx)?;
            let kappa = case.form(ctx, "kappa", SpaceTag::Eqn)?;
            let out = conservation_characteristic(&kappa, &eq).map_err(show)?;
            let verdict = match out.verdict {
                ConservationVerdict::NotConservationLaw => "not_conservation_law",
                ConservationVerdict::Nontrivial => "nontrivial",
                ConservationVerdict::Trivial => "trivial",
                ConservationVerdict::Inconclusive(_) => "inconclusive",
            };
            rep.witness("closure_residual", &out.closure_residual);
            rep.witness("Q", &out.characteristic);
            if let Some(ex) = ctx.take("verdict") {
                expect_verdict(rep, &ex, verdict);
            }
            if let Some(ex) = ctx.take("Q") {
                expect_expr_exact(rep, ctx, &ex, &out.characteristic)?;
            }
            if let Some(ex) = ctx.take("R") {
                let mult = out.witness.as_ref().and_then(|w| w.multiplicative.as_ref());
                match mult {
                    Some(r) => expect_expr_exact(rep, ctx, &ex, r)?,
                    None => {
                        rep.cert_bool("R matches expectation", false, "no multiplicative witness");
                    }
                }
            }
        }
        "helmholtz" => {
            let q = case.expr(ctx, "Q")?;
            let base = case.base()?;
            let out = helmholtz_and_lagrangian(&q, case.space, &base).map_err(show)?;
            let expected = ctx.take("euler_image");
            if expected.as_ref().map(|e| e.value == "true").unwrap_or(true) {
                rep.cert_op(
                    "linearization self-adjointness",
                    &out.self_adjointness_residual,
                );
            } else {
                rep.witness("self_adjointness_residual", &out.self_adjointness_residual);
            }
            if let Some(ex) = expected {
                expect_bool(rep, &ex, out.is_euler_image)?;
            }
            if let Some(a) = &out.lagrangian {
                rep.witness("A", a);
                let back = euler_lagrange(a, case.space).map_err(show)?;
                rep.cert_expr("density reproduces the expression", &back.sub(&q));
            }
            if let Some(note) = &out.note {
                rep.note(note.clone());
            }
            if let Some(ex) = ctx.take("A") {
                match &out.lagrangian {
                    Some(a) => expect_density(rep, ctx, &ex, a)?,
                    None => {
                        rep.cert_bool("A matches expectation", false, "no density produced");
                    }
                }
            }
        }
        "lambda" => {
            let op = case.operator(ctx, "E", SpaceTag::Eqn)?;
            let eq = case.context(ctx)?;
            let base = case.base()?;
            let class = omega_from_operator(&op, &eq).map_err(show)?;
            rep.cert_form("skewness", &class.skew_residual);
            rep.cert_form("horizontal closure", &class.closure_residual);
            let inv = lambda_invariant(&class.omega, &eq, &base).map_err(show)?;
            let dv_eta = d_vertical(&inv.eta);
            rep.cert_form("vertical primitive recovers the class form", &dv_eta.sub(&class.omega).map_err(show)?);
            let dh_eta = d_horizontal(&inv.eta, Some(&eq)).map_err(show)?;
            let dv_lambda = d_vertical(&inv.lambda);
            rep.cert_form("descent compatibility", &dv_lambda.sub(&dh_eta).map_err(show)?);
            rep.witness("lambda", &inv.lambda);
            if let Some(ex) = ctx.take("lambda") {
                let expected = parse_form(&ex.value, &ctx.decls, SpaceTag::Eqn)
                    .map_err(|e| format!("expectation `lambda`: {e}"))?;
                let diff = inv.lambda.sub(&expected).map_err(show)?;
                if ex.exact {
                    rep.cert_form("lambda matches expectation", &diff);
                } else {
                    rep.cert_form("lambda matches expectation up to null terms", &d_vertical(&diff));
                }
            }
        }
        "potentialize" => {
            let h = case.expr(ctx, "H1")?;
            let out = potentialize(&h, case.depth).map_err(show)?;
            rep.witness("K", &out.rhs);
            if let Some(w) = &out.witness {
                rep.cert_op("operator identity", &w.operator_residual);
                rep.cert_expr("density identity", &w.density_residual);
                rep.witness("Q", &w.q);
                rep.witness("L", &w.l);
            } else {
                rep.note("no variational witness at this depth".to_string());
            }
            if let Some(ex) = ctx.take("K") {
                expect_expr_exact(rep, ctx, &ex, &out.rhs)?;
            }
        }
        "compat" => {
            let d0 = case.operator(ctx, "D0", SpaceTag::Sb)?;
            let h1 = case.expr(ctx, "H1")?;
            let base = case.base()?;
            let out = compatibility_h2(&d0, &h1, &base).map_err(show)?;
            let expected = ctx.take("compatible");
            if expected.as_ref().map(|e| e.value == "true").unwrap_or(true) {
                rep.cert_expr("gradient image is a total x-derivative", &out.image_residual);
                if let Some(hh) = &out.helmholtz {
                    rep.cert_op("flux self-adjointness", &hh.self_adjointness_residual);
                }
            } else {
                rep.witness("image_residual", &out.image_residual);
            }
            if let Some(ex) = expected {
                expect_bool(rep, &ex, out.compatible)?;
            }
            if let Some(h2) = &out.h2 {
                rep.witness("H2", h2);
            }
            if let Some(note) = &out.note {
                rep.note(note.clone());
            }
            if let Some(ex) = ctx.take("H2") {
                match &out.h2 {
                    Some(h2) => expect_density(rep, ctx, &ex, h2)?,
                    None => {
                        rep.cert_bool("H2 matches expectation", false, "no second density produced");
                    }
                }
            }
        }
        "pipeline" => {
            let d0 = case.operator(ctx, "D0", SpaceTag::Sb)?;
            let h1 = case.expr(ctx, "H1")?;
            let base = case.base()?;
            let out = bi_hamiltonian_pipeline(&d0, &h1, case.depth, &base).map_err(show)?;
            rep.cert_expr(
                "gradient image is a total x-derivative",
                &out.compat.image_residual,
            );
            rep.cert_op("shifted operator skew residual", &out.symplectic.skew_residual);
            if let Some(cr) = &out.symplectic.closure_residual {
                rep.cert_form("shifted operator two-form closure", cr);
            }
            rep.cert_op("operator identity", &out.witness.operator_residual);
            rep.cert_expr("density identity", &out.witness.density_residual);
            rep.witness("K", &out.rhs);
            rep.witness("Q", &out.q);
            rep.witness("L", &out.l);
            if let Some(ex) = ctx.take("K") {
                expect_expr_exact(rep, ctx, &ex, &out.rhs)?;
            }
            if let Some(ex) = ctx.take("Q") {
                let expected = parse_value_expr(ctx, &ex)?;
                let diff = out.q.sub(&expected);
                if ex.exact {
                    rep.cert_expr("Q matches expectation", &diff);
                } else {
                    // two characteristics certify the same operator when
                    // they differ by a variation: the difference has a
                    // self-adjoint linearization
                    let fd = frechet(&diff, SpaceTag::Free).map_err(show)?;
                    let residual = fd.sub(&fd.adjoint()).map_err(show)?;
                    rep.cert_op("Q matches expectation up to a variation", &residual);
                }
            }
        }
        "cylindrical" => {
            let base = case.base()?;
            let out = cylindrical_kdv_experiment(case.sign, &base).map_err(show)?;
            rep.input("sign", case.sign);
            rep.witness("rung1_residual", &out.rung1_residual);
            rep.witness("rung0_residual", &out.rung0_residual);
            if let Some(ex) = ctx.take("rung1") {
                expect_expr_exact(rep, ctx, &ex, &out.rung1_residual)?;
            }
            if let Some(ex) = ctx.take("rung0") {
                expect_expr_exact(rep, ctx, &ex, &out.rung0_residual)?;
            }
        }
        other => return Err(format!("unknown check kind `{other}`")),
    }
    Ok(())
}

/// Run every bundled case plus `extra` files, filtered by substring,
/// and fold each case into one certificate of an aggregate report.
/// Results are ordered by case name so repeated runs agree byte for
/// byte apart from timing.
pub fn corpus_run(
    filter: Option<&str>,
    parallel: bool,
    extra: &[(String, String)],
) -> Result<Report, CorpusError> {
    let mut cases: Vec<CorpusCase> = Vec::new();
    for (origin, content) in bundled() {
        cases.extend(parse_cases(origin, content)?);
    }
    for (origin, content) in extra {
        cases.extend(parse_cases(origin, content)?);
    }
    if let Some(f) = filter {
        cases.retain(|c| c.name.contains(f));
    }
    cases.sort_by(|a, b| a.name.cmp(&b.name));
    for pair in cases.windows(2) {
        if pair[0].name == pair[1].name {
            return Err(CorpusError::DuplicateCase(pair[0].name.clone()));
        }
    }

    let results: Vec<(String, Report)> = if parallel {
        cases
            .par_iter()
            .map(|c| (c.name.clone(), run_case(c)))
            .collect()
    } else {
        cases.iter().map(|c| (c.name.clone(), run_case(c))).collect()
    };

    let mut rep = Report::new("corpus");
    rep.input("cases", results.len());
    if let Some(f) = filter {
        rep.input("filter", f);
    }
    let mut failures = 0usize;
    for (name, sub) in &results {
        match sub.exit_code() {
            0 => {
                rep.cert_bool(name, true, "0");
            }
            code => {
                failures += 1;
                let detail = sub
                    .certificates
                    .iter()
                    .filter(|c| c.ok != Some(true))
                    .map(|c| format!("{}: {}", c.name, c.residual))
                    .collect::<Vec<_>>()
                    .join("; ");
                rep.push(Certificate {
                    name: name.clone(),
                    residual: detail,
                    ok: if code == 2 { None } else { Some(false) },
                    note: None,
                });
            }
        }
    }
    if failures == 0 {
        rep.verdict(format!("{} cases pass", results.len()));
    } else {
        rep.verdict(format!("{failures} of {} cases fail", results.len()));
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sectioned_file_parses_with_continuations() {
        let text = "
# leading comment
[case] sample
[declare] param c1;
[equation] K = u_xxx
    + c1*u*u_x
[base] u = 1
[depth] 3
[check] first-order
[expect] verdict = operator_found
[expect] H2 ~ u^2
";
        let cases = parse_cases("inline", text).unwrap();
        assert_eq!(cases.len(), 1);
        let c = &cases[0];
        assert_eq!(c.name, "sample");
        assert_eq!(c.exprs["K"], "u_xxx + c1*u*u_x");
        assert_eq!(c.depth, 3);
        assert_eq!(c.check, "first-order");
        assert_eq!(c.expects.len(), 2);
        assert!(c.expects[0].exact);
        assert!(!c.expects[1].exact);
        assert_eq!(c.expects[1].value, "u^2");
    }

    #[test]
    fn malformed_sections_are_rejected_with_location() {
        let err = parse_cases("inline", "[equation] K = u_x").unwrap_err();
        assert!(err.to_string().contains("before any `[case]`"));
        let err = parse_cases("inline", "[case] a\n[what] 3\n[check] compat").unwrap_err();
        assert!(err.to_string().contains("unknown section"));
        let err = parse_cases("inline", "[case] a\n[equation] K = u_x").unwrap_err();
        assert!(err.to_string().contains("no `[check]`"));
    }

    #[test]
    fn unknown_expectation_fails_the_case() {
        let text = "
[case] stray
[equation] K = u_xxx + u*u_x
[check] first-order
[expect] verdict = no_operator_not_closed
[expect] banana = 7
";
        let case = &parse_cases("inline", text).unwrap()[0];
        let rep = run_case(case);
        assert_eq!(rep.exit_code(), 1);
        assert!(rep
            .certificates
            .iter()
            .any(|c| c.name.contains("banana") && c.ok == Some(false)));
    }

    #[test]
    fn failed_expectation_is_a_failing_certificate() {
        let text = "
[case] wrong
[equation] K = u_xxx + u*u_x
[check] first-order
[expect] verdict = operator_found
";
        let rep = run_case(&parse_cases("inline", text).unwrap()[0]);
        assert_eq!(rep.exit_code(), 1);
    }

    #[test]
    fn bundled_corpus_passes_and_is_deterministic() {
        let sequential = corpus_run(None, false, &[]).unwrap();
        assert_eq!(sequential.exit_code(), 0, "{}", sequential.render_text());
        let parallel = corpus_run(None, true, &[]).unwrap();
        assert_eq!(
            sequential
                .certificates
                .iter()
                .map(|c| (&c.name, &c.residual, c.ok))
                .collect::<Vec<_>>(),
            parallel
                .certificates
                .iter()
                .map(|c| (&c.name, &c.residual, c.ok))
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn filter_restricts_cases() {
        let rep = corpus_run(Some("cylindrical"), false, &[]).unwrap();
        assert!(rep.certificates.iter().all(|c| c.name.contains("cylindrical")));
        assert!(!rep.certificates.is_empty());
    }

    #[test]
    fn extra_file_with_engine_error_reports_instead_of_aborting() {
        let text = "
[case] broken-input
[equation] K = u_xxx +
[check] first-order
";
        let rep = corpus_run(None, false, &[("extra".into(), text.into())]).unwrap();
        let cert = rep
            .certificates
            .iter()
            .find(|c| c.name == "broken-input")
            .unwrap();
        assert_eq!(cert.ok, Some(false));
    }
}
