//! Exact symbolic expressions over jet-space coordinates.
//!
//! An [`Expr`] is a canonical sum of [`Term`]s; each term is an exact
//! rational coefficient times a product of base powers. Bases are jet
//! coordinates, declared parameters, opaque function symbols, prime radicands
//! (for fractional powers of rationals), formal logarithms, and primitive
//! multi-term polynomials (for radicals of sums and for denominators).
//!
//! Design principles:
//! - **Canonical on the supported fragment.** Two expressions representing
//!   the same rational-power function normalize to identical term lists, so
//!   equality and zero-testing are structural. The normalizer clears
//!   composite denominators to a common denominator, cancels exactly by
//!   multivariate division, and extracts perfect powers from radicands.
//! - **No floats anywhere.** All arithmetic is `BigRational`/`BigInt`.
//! - **Explicit failure.** Operations that would leave the fragment
//!   (fractional powers of opaque symbols, logs of non-positive constants,
//!   division by zero) return errors instead of guessing.

pub mod calculus;
pub mod coords;
pub mod fmt;
pub mod integrate;
pub mod parse;

pub use coords::{JetCoord, OpaqueRef, OpaqueSym, Var};

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, Zero};
use std::cmp::Ordering;
use std::sync::Arc;
use thiserror::Error;

/// Errors from expression construction and manipulation.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ExprError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("fractional power of an opaque function symbol is not supported")]
    FractionalOpaquePower,
    #[error("fractional power of a formal logarithm is not supported")]
    FractionalLogPower,
    #[error("radicand is a negative constant; fractional powers assume positive arguments")]
    NegativeRadicand,
    #[error("logarithm of a non-positive constant")]
    NonPositiveLog,
    #[error("nested logarithm is outside the supported fragment")]
    NestedLog,
    #[error("substitution into the argument list of opaque symbol `{0}` is not supported")]
    OpaqueArgSubstitution(String),
    #[error("zero raised to a non-positive power")]
    ZeroToNonPositive,
    #[error("{0}")]
    Parse(String),
    #[error("expression is not a constant rational")]
    NotAConstant,
    #[error("integration outside the supported fragment: {0}")]
    Integrate(String),
}

/// One multiplicative base in a term.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Base {
    /// A jet coordinate: `t`, `x`, or `u_{a,i}`.
    Coord(JetCoord),
    /// A declared scalar parameter (time- and space-independent).
    Param(String),
    /// An opaque function symbol, possibly differentiated.
    Opaque(OpaqueRef),
    /// A positive integer radicand carrying a fractional exponent in (0,1);
    /// integer parts of its powers live in the coefficient.
    Rad(BigInt),
    /// Formal logarithm of a canonical expression (integer exponents only).
    Log(Arc<Expr>),
    /// A primitive multi-term polynomial: integer coprime coefficients,
    /// positive leading sign, no common monomial factor, not a perfect power.
    /// Carries a rational exponent that is negative or in (0,1); positive
    /// integer parts are always expanded.
    Poly(Arc<Expr>),
}

/// A product of base powers with a rational coefficient.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Term {
    pub coeff: BigRational,
    /// Sorted by `Base`, exponents nonzero.
    pub powers: Vec<(Base, BigRational)>,
}

/// Canonical sum of terms. Equality is structural and, on the supported
/// fragment, semantic.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct Expr {
    terms: Vec<Term>,
}

/// Three-valued zero test: `Definite` answers are certified, `Inconclusive`
/// flags the (never hit in practice) multi-radicand corner of the fragment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ZeroTest {
    Definite(bool),
    Inconclusive(String),
}

impl ZeroTest {
    pub fn is_definitely_zero(&self) -> bool {
        matches!(self, ZeroTest::Definite(true))
    }
}

// =========================================================================
// Term-level helpers
// =========================================================================

impl Term {
    fn constant(c: BigRational) -> Self {
        Term {
            coeff: c,
            powers: Vec::new(),
        }
    }

    fn is_constant(&self) -> bool {
        self.powers.is_empty()
    }

    /// Total degree: sum of all exponents.
    fn degree(&self) -> BigRational {
        let mut d = BigRational::zero();
        for (_, e) in &self.powers {
            d += e;
        }
        d
    }

    fn exp_of(&self, base: &Base) -> BigRational {
        self.powers
            .iter()
            .find(|(b, _)| b == base)
            .map(|(_, e)| e.clone())
            .unwrap_or_else(BigRational::zero)
    }
}

/// Graded-lexicographic order on monomials (term keys): higher total degree
/// first, ties broken by comparing exponents along the merged base sequence
/// (smaller base = more significant). Compatible with multiplication.
fn mono_cmp(a: &Term, b: &Term) -> Ordering {
    match a.degree().cmp(&b.degree()) {
        Ordering::Equal => {}
        o => return o,
    }
    let (mut i, mut j) = (0, 0);
    loop {
        match (a.powers.get(i), b.powers.get(j)) {
            (None, None) => return Ordering::Equal,
            (Some((_, ea)), None) => {
                // a has an extra base; its exponent vs implicit 0 decides.
                return ea.cmp(&BigRational::zero());
            }
            (None, Some((_, eb))) => {
                return BigRational::zero().cmp(eb);
            }
            (Some((ba, ea)), Some((bb, eb))) => match ba.cmp(bb) {
                Ordering::Less => {
                    // a has a power on an earlier base.
                    match ea.cmp(&BigRational::zero()) {
                        Ordering::Equal => i += 1,
                        o => return o,
                    }
                }
                Ordering::Greater => match BigRational::zero().cmp(eb) {
                    Ordering::Equal => j += 1,
                    o => return o,
                },
                Ordering::Equal => match ea.cmp(eb) {
                    Ordering::Equal => {
                        i += 1;
                        j += 1;
                    }
                    o => return o,
                },
            },
        }
    }
}

/// Merge two sorted power lists, adding exponents; drops zeros.
fn merge_powers(a: &[(Base, BigRational)], b: &[(Base, BigRational)]) -> Vec<(Base, BigRational)> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            Ordering::Less => {
                out.push(a[i].clone());
                i += 1;
            }
            Ordering::Greater => {
                out.push(b[j].clone());
                j += 1;
            }
            Ordering::Equal => {
                let e = &a[i].1 + &b[j].1;
                if !e.is_zero() {
                    out.push((a[i].0.clone(), e));
                }
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

fn rat_floor(q: &BigRational) -> BigInt {
    q.floor().to_integer()
}

fn rat_is_integer(q: &BigRational) -> bool {
    q.denom().is_one()
}

fn bigint_to_i64(n: &BigInt) -> Option<i64> {
    use num::ToPrimitive;
    n.to_i64()
}

// =========================================================================
// Expression construction and normalization
// =========================================================================

impl Expr {
    pub fn zero() -> Self {
        Expr { terms: Vec::new() }
    }

    pub fn one() -> Self {
        Expr::from_int(1)
    }

    pub fn from_int(n: i64) -> Self {
        Expr::from_rational(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn from_rational(c: BigRational) -> Self {
        if c.is_zero() {
            Expr::zero()
        } else {
            Expr {
                terms: vec![Term::constant(c)],
            }
        }
    }

    pub fn rational(num: i64, den: i64) -> Self {
        Expr::from_rational(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn coord(c: JetCoord) -> Self {
        Expr {
            terms: vec![Term {
                coeff: BigRational::one(),
                powers: vec![(Base::Coord(c), BigRational::one())],
            }],
        }
    }

    pub fn param(name: &str) -> Self {
        Expr {
            terms: vec![Term {
                coeff: BigRational::one(),
                powers: vec![(Base::Param(name.to_string()), BigRational::one())],
            }],
        }
    }

    pub fn opaque(r: OpaqueRef) -> Self {
        Expr {
            terms: vec![Term {
                coeff: BigRational::one(),
                powers: vec![(Base::Opaque(r), BigRational::one())],
            }],
        }
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Expression holding a single (already canonical) term.
    pub fn from_term(t: Term) -> Expr {
        Expr::normalize(vec![t])
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.as_constant().map(|c| c.is_one()).unwrap_or(false)
    }

    /// Constant value if the expression is a bare rational.
    pub fn as_constant(&self) -> Option<BigRational> {
        match self.terms.len() {
            0 => Some(BigRational::zero()),
            1 if self.terms[0].is_constant() => Some(self.terms[0].coeff.clone()),
            _ => None,
        }
    }

    pub fn leading(&self) -> Option<&Term> {
        self.terms.first()
    }

    /// Build from a raw term list: enforce exponent ranges, combine like
    /// terms, canonicalize fractions, sort.
    fn normalize(raw: Vec<Term>) -> Expr {
        let mut expanded: Vec<Term> = Vec::with_capacity(raw.len());
        for t in raw {
            expanded.extend(expand_term(t.coeff, t.powers));
        }
        let mut terms = combine(expanded);
        if needs_fraction_pass(&terms) {
            terms = canonicalize_fractions(terms);
        }
        sort_for_display(&mut terms);
        Expr { terms }
    }

    pub fn add(&self, other: &Expr) -> Expr {
        let mut raw = self.terms.clone();
        raw.extend(other.terms.iter().cloned());
        Expr::normalize(raw)
    }

    pub fn neg(&self) -> Expr {
        Expr {
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    coeff: -t.coeff.clone(),
                    powers: t.powers.clone(),
                })
                .collect(),
        }
    }

    pub fn sub(&self, other: &Expr) -> Expr {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Expr) -> Expr {
        if self.is_zero() || other.is_zero() {
            return Expr::zero();
        }
        let mut raw = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                raw.push(Term {
                    coeff: &a.coeff * &b.coeff,
                    powers: merge_powers(&a.powers, &b.powers),
                });
            }
        }
        Expr::normalize(raw)
    }

    pub fn scale(&self, c: &BigRational) -> Expr {
        if c.is_zero() {
            return Expr::zero();
        }
        Expr {
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    coeff: &t.coeff * c,
                    powers: t.powers.clone(),
                })
                .collect(),
        }
    }

    pub fn scale_int(&self, n: i64) -> Expr {
        self.scale(&BigRational::from_integer(BigInt::from(n)))
    }

    pub fn div(&self, other: &Expr) -> Result<Expr, ExprError> {
        Ok(self.mul(&other.pow_rational(&BigRational::from_integer(BigInt::from(-1)))?))
    }

    /// Raise to an exact rational power.
    pub fn pow_rational(&self, q: &BigRational) -> Result<Expr, ExprError> {
        if q.is_zero() {
            return if self.is_zero() {
                Err(ExprError::ZeroToNonPositive)
            } else {
                Ok(Expr::one())
            };
        }
        if self.is_zero() {
            return if q.is_positive() {
                Ok(Expr::zero())
            } else {
                Err(ExprError::ZeroToNonPositive)
            };
        }
        if self.terms.len() == 1 {
            let t = &self.terms[0];
            let (c, mut powers) = rational_pow(&t.coeff, q)?;
            for (base, e) in &t.powers {
                let ne = e * q;
                validate_exponent(base, &ne)?;
                powers.push((base.clone(), ne));
            }
            powers.sort_by(|a, b| a.0.cmp(&b.0));
            return Ok(Expr::normalize(vec![Term { coeff: c, powers }]));
        }
        // Multi-term base.
        if rat_is_integer(q) {
            let n = rat_floor(q);
            let neg = n.is_negative();
            let n_abs = bigint_to_i64(&n.abs()).ok_or(ExprError::NotAConstant)?;
            let mut acc = Expr::one();
            let mut sq = self.clone();
            let mut k = n_abs as u64;
            while k > 0 {
                if k & 1 == 1 {
                    acc = acc.mul(&sq);
                }
                k >>= 1;
                if k > 0 {
                    sq = sq.mul(&sq);
                }
            }
            if !neg {
                return Ok(acc);
            }
            // Invert a positive power via the primitive decomposition.
            let (c, mono, prim, mult) = to_poly_parts(&acc);
            let (ci, mut powers) =
                rational_pow(&c, &BigRational::from_integer(BigInt::from(-1)))?;
            for (b, e) in mono {
                let ne = -e;
                validate_exponent(&b, &ne)?;
                powers.push((b, ne));
            }
            if let Some(p) = prim {
                powers.push((Base::Poly(p), -BigRational::from_integer(BigInt::from(mult))));
            }
            powers.sort_by(|a, b| a.0.cmp(&b.0));
            return Ok(Expr::normalize(vec![Term { coeff: ci, powers }]));
        }
        // Fractional power of a sum: go through the primitive decomposition.
        let (c, mono, prim, mult) = to_poly_parts(self);
        let (cq, mut powers) = rational_pow(&c, q)?;
        for (b, e) in mono {
            let ne = &e * q;
            validate_exponent(&b, &ne)?;
            powers.push((b, ne));
        }
        if let Some(p) = prim {
            powers.push((Base::Poly(p), BigRational::from_integer(BigInt::from(mult)) * q));
        }
        powers.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(Expr::normalize(vec![Term { coeff: cq, powers }]))
    }

    pub fn pow_int(&self, n: i64) -> Result<Expr, ExprError> {
        self.pow_rational(&BigRational::from_integer(BigInt::from(n)))
    }

    pub fn sqrt(&self) -> Result<Expr, ExprError> {
        self.pow_rational(&BigRational::new(BigInt::from(1), BigInt::from(2)))
    }

    /// Formal logarithm, split canonically over products, powers, and
    /// rational contents: `log(c·Πbᵉ) = log c + Σ e·log b`.
    pub fn log(&self) -> Result<Expr, ExprError> {
        if self.is_zero() {
            return Err(ExprError::NonPositiveLog);
        }
        if self.terms.len() == 1 {
            let t = &self.terms[0];
            let mut out = log_of_rational(&t.coeff)?;
            for (base, e) in &t.powers {
                out = out.add(&log_of_base(base)?.scale(e));
            }
            return Ok(out);
        }
        let (c, mono, prim, mult) = to_poly_parts(self);
        let mut out = log_of_rational(&c)?;
        for (b, e) in mono {
            out = out.add(&log_of_base(&b)?.scale(&e));
        }
        if let Some(p) = prim {
            out = out.add(
                &Expr {
                    terms: vec![Term {
                        coeff: BigRational::from_integer(BigInt::from(mult)),
                        powers: vec![(Base::Log(p), BigRational::one())],
                    }],
                }
                .clone(),
            );
        }
        Ok(out)
    }

    /// Certified zero test. `Definite(false)` is withheld (flagged
    /// inconclusive) only when two distinct multi-term radicands with
    /// overlapping coordinate support coexist, where radical dependence
    /// could in principle hide a cancellation.
    pub fn zero_test(&self) -> ZeroTest {
        if self.terms.is_empty() {
            return ZeroTest::Definite(true);
        }
        let mut frac_polys: Vec<&Arc<Expr>> = Vec::new();
        for t in &self.terms {
            for (b, e) in &t.powers {
                if let Base::Poly(p) = b {
                    if !rat_is_integer(e) && !frac_polys.iter().any(|q| Arc::ptr_eq(q, p) || ***q == **p) {
                        frac_polys.push(p);
                    }
                }
            }
        }
        if frac_polys.len() >= 2 {
            for a in 0..frac_polys.len() {
                for b in (a + 1)..frac_polys.len() {
                    let sa = frac_polys[a].coord_support();
                    let sb = frac_polys[b].coord_support();
                    if sa.iter().any(|c| sb.contains(c)) {
                        return ZeroTest::Inconclusive(
                            "nonzero certificate involves two radicands sharing coordinates; \
                             radical independence is assumed, not proven"
                                .to_string(),
                        );
                    }
                }
            }
        }
        ZeroTest::Definite(false)
    }

    /// Jet coordinates the expression depends on, including arguments of its
    /// opaque symbols (which contribute through the chain rule).
    pub fn coord_support(&self) -> Vec<JetCoord> {
        let mut out: Vec<JetCoord> = Vec::new();
        fn visit(e: &Expr, out: &mut Vec<JetCoord>) {
            for t in &e.terms {
                for (b, _) in &t.powers {
                    match b {
                        Base::Coord(c) => {
                            if !out.contains(c) {
                                out.push(*c);
                            }
                        }
                        Base::Opaque(r) => {
                            for c in &r.sym.args {
                                if !out.contains(c) {
                                    out.push(*c);
                                }
                            }
                        }
                        Base::Log(g) | Base::Poly(g) => visit(g, out),
                        _ => {}
                    }
                }
            }
        }
        visit(self, &mut out);
        out.sort();
        out
    }

    /// The sum of the terms that involve at least one fiber coordinate
    /// `u_{a,i}` (a subset of canonical terms stays canonical).
    pub fn fiber_dependent_part(&self) -> Expr {
        let kept: Vec<Term> = self
            .terms
            .iter()
            .filter(|t| {
                let single = Expr {
                    terms: vec![(*t).clone()],
                };
                single.coord_support().iter().any(|c| c.is_fiber())
            })
            .cloned()
            .collect();
        Expr { terms: kept }
    }

    /// Highest pure x-jet order `i` with `u_{0,i}` in the support (None if
    /// no x-jet appears).
    pub fn max_xjet_order(&self) -> Option<u32> {
        self.coord_support()
            .iter()
            .filter_map(|c| match c {
                JetCoord::U { a: 0, i } => Some(*i),
                _ => None,
            })
            .max()
    }

    /// True if the expression contains any `u_{a,i}` with `a >= 1`.
    pub fn has_tjet(&self) -> bool {
        self.coord_support()
            .iter()
            .any(|c| matches!(c, JetCoord::U { a, .. } if *a >= 1))
    }

    /// True if any formal logarithm base occurs.
    pub fn has_log(&self) -> bool {
        fn visit(e: &Expr) -> bool {
            e.terms.iter().any(|t| {
                t.powers.iter().any(|(b, _)| match b {
                    Base::Log(_) => true,
                    Base::Poly(p) => visit(p),
                    _ => false,
                })
            })
        }
        visit(self)
    }
}

fn validate_exponent(base: &Base, e: &BigRational) -> Result<(), ExprError> {
    match base {
        Base::Opaque(_) if !rat_is_integer(e) => Err(ExprError::FractionalOpaquePower),
        Base::Log(_) if !rat_is_integer(e) => Err(ExprError::FractionalLogPower),
        _ => Ok(()),
    }
}

fn log_of_rational(c: &BigRational) -> Result<Expr, ExprError> {
    if !c.is_positive() {
        return Err(ExprError::NonPositiveLog);
    }
    if c.is_one() {
        return Ok(Expr::zero());
    }
    let mut out = Expr::zero();
    for (p, e) in factor_integer(c.numer()) {
        out = out.add(&log_atom(p).scale_int(e));
    }
    for (p, e) in factor_integer(c.denom()) {
        out = out.add(&log_atom(p).scale_int(-e));
    }
    Ok(out)
}

fn log_atom(n: BigInt) -> Expr {
    Expr {
        terms: vec![Term {
            coeff: BigRational::one(),
            powers: vec![(
                Base::Log(Arc::new(Expr::from_rational(BigRational::from_integer(n)))),
                BigRational::one(),
            )],
        }],
    }
}

fn log_of_base(base: &Base) -> Result<Expr, ExprError> {
    let inner = match base {
        Base::Coord(c) => Expr::coord(*c),
        Base::Param(p) => Expr::param(p),
        Base::Opaque(r) => Expr::opaque(r.clone()),
        Base::Rad(n) => Expr::from_rational(BigRational::from_integer(n.clone())),
        Base::Poly(p) => (**p).clone(),
        Base::Log(_) => return Err(ExprError::NestedLog),
    };
    Ok(Expr {
        terms: vec![Term {
            coeff: BigRational::one(),
            powers: vec![(Base::Log(Arc::new(inner)), BigRational::one())],
        }],
    })
}

// =========================================================================
// Exponent-range enforcement (level 1)
// =========================================================================

/// Enforce per-base exponent invariants on one raw term, expanding positive
/// integer parts of polynomial bases and integer parts of radicand powers.
/// Always succeeds: inputs come from valid expressions, whose exponent sums
/// stay valid (integers stay integers).
fn expand_term(coeff: BigRational, powers: Vec<(Base, BigRational)>) -> Vec<Term> {
    // Merge duplicate bases first so exponents of the same base are summed
    // before any range decision (e.g. P^(-1)·P^(+1) must cancel, not expand).
    let mut powers = powers;
    powers.sort_by(|a, b| a.0.cmp(&b.0));
    let mut merged_in: Vec<(Base, BigRational)> = Vec::with_capacity(powers.len());
    for (b, e) in powers {
        match merged_in.last_mut() {
            Some((lb, le)) if *lb == b => *le += e,
            _ => merged_in.push((b, e)),
        }
    }
    merged_in.retain(|(_, e)| !e.is_zero());
    let mut acc: Vec<Term> = vec![Term::constant(coeff)];
    for (base, q) in merged_in {
        if q.is_zero() {
            continue;
        }
        match &base {
            Base::Coord(_) | Base::Param(_) | Base::Opaque(_) | Base::Log(_) => {
                for t in &mut acc {
                    t.powers.push((base.clone(), q.clone()));
                }
            }
            Base::Rad(n) => {
                let fl = rat_floor(&q);
                let fr = &q - BigRational::from_integer(fl.clone());
                if !fl.is_zero() {
                    let scale = bigint_pow_rat(n, &fl);
                    for t in &mut acc {
                        t.coeff *= &scale;
                    }
                }
                if !fr.is_zero() {
                    for t in &mut acc {
                        t.powers.push((base.clone(), fr.clone()));
                    }
                }
            }
            Base::Poly(p) => {
                if q.is_negative() {
                    for t in &mut acc {
                        t.powers.push((base.clone(), q.clone()));
                    }
                } else {
                    let fl = rat_floor(&q); // >= 0
                    let fr = &q - BigRational::from_integer(fl.clone());
                    if !fl.is_zero() {
                        let n = bigint_to_i64(&fl).unwrap_or(0).max(0) as u32;
                        let pw = poly_power(p, n);
                        let mut next: Vec<Term> = Vec::with_capacity(acc.len() * pw.terms.len());
                        for t in &acc {
                            for pt in &pw.terms {
                                next.push(Term {
                                    coeff: &t.coeff * &pt.coeff,
                                    powers: merge_unsorted(&t.powers, &pt.powers),
                                });
                            }
                        }
                        acc = next;
                    }
                    if !fr.is_zero() {
                        for t in &mut acc {
                            t.powers.push((base.clone(), fr.clone()));
                        }
                    }
                }
            }
        }
    }
    // Sort each term's powers and merge duplicate bases introduced above.
    let mut out = Vec::with_capacity(acc.len());
    for t in acc {
        let mut powers = t.powers;
        powers.sort_by(|a, b| a.0.cmp(&b.0));
        let mut merged: Vec<(Base, BigRational)> = Vec::with_capacity(powers.len());
        for (b, e) in powers {
            match merged.last_mut() {
                Some((lb, le)) if *lb == b => {
                    *le += e;
                }
                _ => merged.push((b, e)),
            }
        }
        merged.retain(|(_, e)| !e.is_zero());
        // Exponent sums may re-enter expandable ranges (e.g. P^(1/2)·P^(1/2)).
        if merged.iter().any(|(b, e)| needs_expansion(b, e)) {
            out.extend(expand_term(t.coeff, merged));
        } else if !t.coeff.is_zero() {
            out.push(Term {
                coeff: t.coeff,
                powers: merged,
            });
        }
    }
    out
}

fn needs_expansion(base: &Base, e: &BigRational) -> bool {
    match base {
        Base::Poly(_) => e.is_positive() && *e >= BigRational::one(),
        Base::Rad(_) => e.is_negative() || *e >= BigRational::one(),
        _ => false,
    }
}

fn merge_unsorted(a: &[(Base, BigRational)], b: &[(Base, BigRational)]) -> Vec<(Base, BigRational)> {
    let mut v = a.to_vec();
    v.extend_from_slice(b);
    v
}

/// n-th power of a polynomial base's interior, as a flat term list.
fn poly_power(p: &Arc<Expr>, n: u32) -> Expr {
    let mut acc = Expr::one();
    for _ in 0..n {
        acc = acc.mul(p);
    }
    acc
}

fn bigint_pow_rat(n: &BigInt, e: &BigInt) -> BigRational {
    let a = bigint_to_i64(&e.abs()).unwrap_or(0) as u32;
    let p = n.pow(a);
    if e.is_negative() {
        BigRational::new(BigInt::one(), p)
    } else {
        BigRational::from_integer(p)
    }
}

// =========================================================================
// Combination and fraction canonicalization (levels 2–3)
// =========================================================================

fn combine(mut terms: Vec<Term>) -> Vec<Term> {
    terms.sort_by(|a, b| a.powers.cmp(&b.powers));
    let mut out: Vec<Term> = Vec::with_capacity(terms.len());
    for t in terms {
        match out.last_mut() {
            Some(last) if last.powers == t.powers => {
                last.coeff += t.coeff;
            }
            _ => out.push(t),
        }
    }
    out.retain(|t| !t.coeff.is_zero());
    out
}

fn needs_fraction_pass(terms: &[Term]) -> bool {
    terms.len() > 1
        && terms.iter().any(|t| {
            t.powers
                .iter()
                .any(|(b, e)| matches!(b, Base::Poly(_)) && e.is_negative())
        })
}

/// Clear polynomial denominators to a common denominator, cancel exactly
/// where possible, and redistribute. This is what makes sums over composite
/// denominators canonical (route-independent).
fn canonicalize_fractions(terms: Vec<Term>) -> Vec<Term> {
    // Collect denominators: polynomial bases with a negative exponent.
    let mut denoms: Vec<(Arc<Expr>, BigInt)> = Vec::new();
    for t in &terms {
        for (b, e) in &t.powers {
            if let Base::Poly(p) = b {
                if e.is_negative() {
                    let clear = -rat_floor(e); // ceil(-e) as positive integer
                    match denoms.iter_mut().find(|(q, _)| **q == **p) {
                        Some((_, c)) => {
                            if clear > *c {
                                *c = clear;
                            }
                        }
                        None => denoms.push((p.clone(), clear)),
                    }
                }
            }
        }
    }
    if denoms.is_empty() {
        return terms;
    }
    // Numerator: multiply every term by each denominator base power.
    let mut raw: Vec<Term> = Vec::new();
    for t in &terms {
        let mut powers = t.powers.clone();
        for (p, c) in &denoms {
            powers.push((Base::Poly(p.clone()), BigRational::from_integer(c.clone())));
        }
        raw.extend(expand_term(t.coeff.clone(), powers));
    }
    let mut numer = combine(raw);
    // Cancel each denominator factor while exact division succeeds.
    let mut remaining: Vec<(Arc<Expr>, BigInt)> = Vec::new();
    for (p, mut c) in denoms {
        while c >= BigInt::one() {
            let (content, stripped) = extract_monomial_content(&numer);
            match try_div_exact(&stripped, p.as_ref()) {
                Some(q) => {
                    numer = combine(
                        q.into_iter()
                            .flat_map(|t| {
                                expand_term(t.coeff, merge_unsorted(&t.powers, &content))
                            })
                            .collect(),
                    );
                    c -= BigInt::one();
                }
                None => break,
            }
        }
        if c >= BigInt::one() {
            remaining.push((p, c));
        }
    }
    if remaining.is_empty() {
        return numer;
    }
    // Redistribute the remaining denominator onto each numerator term.
    let mut out: Vec<Term> = Vec::with_capacity(numer.len());
    for t in numer {
        let mut extra: Vec<(Base, BigRational)> = remaining
            .iter()
            .map(|(p, c)| {
                (
                    Base::Poly(p.clone()),
                    -BigRational::from_integer(c.clone()),
                )
            })
            .collect();
        extra.sort_by(|a, b| a.0.cmp(&b.0));
        let powers = merge_powers(&t.powers, &extra);
        out.push(Term {
            coeff: t.coeff,
            powers,
        });
    }
    combine(out)
}

/// Split off the common monomial factor (per-base minimum exponent across all
/// terms; a base missing from any term contributes nothing).
fn extract_monomial_content(terms: &[Term]) -> (Vec<(Base, BigRational)>, Vec<Term>) {
    if terms.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let mut content: Vec<(Base, BigRational)> = terms[0].powers.clone();
    for t in &terms[1..] {
        let mut next: Vec<(Base, BigRational)> = Vec::with_capacity(content.len());
        for (b, e) in &content {
            let et = t.exp_of(b);
            // Base absent (exp 0): min(e, 0); keep only nonzero minima.
            let m = if et < *e { et } else { e.clone() };
            if !m.is_zero() {
                next.push((b.clone(), m));
            }
        }
        content = next;
        if content.is_empty() {
            break;
        }
    }
    if content.is_empty() {
        return (Vec::new(), terms.to_vec());
    }
    let neg: Vec<(Base, BigRational)> = content
        .iter()
        .map(|(b, e)| (b.clone(), -e.clone()))
        .collect();
    let stripped = terms
        .iter()
        .map(|t| Term {
            coeff: t.coeff.clone(),
            powers: merge_powers(&t.powers, &neg),
        })
        .collect();
    (content, stripped)
}

/// Exact multivariate division of a (content-free) term list by a polynomial.
/// Returns the quotient's terms, or None if not exactly divisible. Treats
/// every base power as an independent monomial slot; sound because divisor
/// and dividend are both in normal form.
fn try_div_exact(dividend: &[Term], divisor: &Expr) -> Option<Vec<Term>> {
    if divisor.terms.is_empty() {
        return None;
    }
    let mut lead_d = &divisor.terms[0];
    for t in &divisor.terms {
        if mono_cmp(t, lead_d) == Ordering::Greater {
            lead_d = t;
        }
    }
    let mut n: Vec<Term> = dividend.to_vec();
    let mut quotient: Vec<Term> = Vec::new();
    let mut steps = 0usize;
    while !n.is_empty() {
        steps += 1;
        if steps > 5000 {
            return None;
        }
        let mut lead_n = &n[0];
        for t in &n {
            if mono_cmp(t, lead_n) == Ordering::Greater {
                lead_n = t;
            }
        }
        // Componentwise divisibility of the leading monomials.
        let mut q_powers: Vec<(Base, BigRational)> = lead_n.powers.clone();
        for (b, e) in &lead_d.powers {
            let en = lead_n.exp_of(b);
            if en < *e {
                return None;
            }
            // subtract
            let neg = vec![(b.clone(), -e.clone())];
            q_powers = merge_powers(&q_powers, &neg);
        }
        let q_term = Term {
            coeff: &lead_n.coeff / &lead_d.coeff,
            powers: q_powers,
        };
        // n -= q_term * divisor
        let mut prod: Vec<Term> = Vec::with_capacity(divisor.terms.len());
        for dt in &divisor.terms {
            prod.extend(expand_term(
                -(&q_term.coeff * &dt.coeff),
                merge_unsorted(&q_term.powers, &dt.powers),
            ));
        }
        let mut raw = n;
        raw.extend(prod);
        n = combine(raw);
        quotient.push(q_term);
    }
    Some(quotient)
}

/// Display/storage order: highest coordinate first (so `u_xxx` precedes
/// `u*u_x`), then graded-lex degree, then coefficient — all descending.
fn sort_for_display(terms: &mut [Term]) {
    terms.sort_by(|a, b| {
        let ma = a.powers.iter().map(|(base, _)| base).max();
        let mb = b.powers.iter().map(|(base, _)| base).max();
        mb.cmp(&ma)
            .then_with(|| mono_cmp(b, a))
            .then_with(|| b.coeff.cmp(&a.coeff))
    });
}

// =========================================================================
// Primitive decomposition and perfect powers
// =========================================================================

/// Decompose a nonzero expression as `c · m · P^k`: rational content `c`
/// (sign chosen so P's leading coefficient is positive), common monomial
/// factor `m`, primitive polynomial part `P` (None when the expression is a
/// single term) with multiplicity `k` from perfect-power extraction.
fn to_poly_parts(
    e: &Expr,
) -> (
    BigRational,
    Vec<(Base, BigRational)>,
    Option<Arc<Expr>>,
    u32,
) {
    debug_assert!(!e.is_zero());
    if e.terms.len() == 1 {
        let t = &e.terms[0];
        return (t.coeff.clone(), t.powers.clone(), None, 1);
    }
    let (mono, stripped) = extract_monomial_content(&e.terms);
    // Rational content: gcd of numerators / lcm of denominators.
    let mut num_gcd = BigInt::zero();
    let mut den_lcm = BigInt::one();
    for t in &stripped {
        num_gcd = num::integer::gcd(num_gcd, t.coeff.numer().abs());
        den_lcm = num::integer::lcm(den_lcm, t.coeff.denom().clone());
    }
    let mut content = BigRational::new(num_gcd, den_lcm);
    // Leading coefficient sign.
    let mut lead = &stripped[0];
    for t in &stripped {
        if mono_cmp(t, lead) == Ordering::Greater {
            lead = t;
        }
    }
    if lead.coeff.is_negative() {
        content = -content;
    }
    let inv = BigRational::one() / &content;
    let mut prim: Vec<Term> = stripped
        .iter()
        .map(|t| Term {
            coeff: &t.coeff * &inv,
            powers: t.powers.clone(),
        })
        .collect();
    sort_for_display(&mut prim);
    let mut p = Expr { terms: prim };
    // Perfect-power reduction: repeatedly extract square/cube roots.
    let mut mult = 1u32;
    loop {
        if let Some(r) = poly_kth_root(&p, 2) {
            p = r;
            mult *= 2;
            continue;
        }
        if let Some(r) = poly_kth_root(&p, 3) {
            p = r;
            mult *= 3;
            continue;
        }
        break;
    }
    (content, mono, Some(Arc::new(p)), mult)
}

/// Exact k-th root of a multi-term polynomial in normal form, if it exists.
fn poly_kth_root(p: &Expr, k: u32) -> Option<Expr> {
    if p.terms.len() < 2 {
        return None;
    }
    let lead = p.terms.iter().max_by(|a, b| mono_cmp(a, b))?;
    // Leading coefficient must be an exact k-th power.
    let cn = exact_root(lead.coeff.numer(), k)?;
    let cd = exact_root(lead.coeff.denom(), k)?;
    let kq = BigRational::from_integer(BigInt::from(k));
    let mut root_powers = Vec::with_capacity(lead.powers.len());
    for (b, e) in &lead.powers {
        let ne = e / &kq;
        validate_exponent(b, &ne).ok()?;
        root_powers.push((b.clone(), ne));
    }
    let mut root = Expr {
        terms: vec![Term {
            coeff: BigRational::new(cn, cd),
            powers: root_powers,
        }],
    };
    let max_iter = p.terms.len() * (k as usize) + 8;
    for _ in 0..max_iter {
        let diff = p.sub(&root.pow_int(k as i64).ok()?);
        if diff.is_zero() {
            return Some(root);
        }
        let lt_diff = diff.terms.iter().max_by(|a, b| mono_cmp(a, b))?;
        // next term = lt_diff / (k * lead(root)^(k-1))
        let lead_r = root.terms.iter().max_by(|a, b| mono_cmp(a, b))?;
        let lead_pow = Term {
            coeff: lead_r.coeff.clone(),
            powers: lead_r.powers.clone(),
        };
        let mut denom_powers: Vec<(Base, BigRational)> = Vec::new();
        let km1 = BigRational::from_integer(BigInt::from(k - 1));
        for (b, e) in &lead_pow.powers {
            denom_powers.push((b.clone(), e * &km1));
        }
        let mut q_powers = lt_diff.powers.clone();
        for (b, e) in &denom_powers {
            let have = lt_diff.exp_of(b);
            let ne = &have - e;
            // Monomial division must be exact for a clean polynomial root.
            let _ = have;
            let neg = vec![(b.clone(), -e.clone())];
            q_powers = merge_powers(&q_powers, &neg);
            if ne.is_negative() && matches!(b, Base::Poly(_) | Base::Rad(_)) {
                return None;
            }
        }
        let denom_c = &lead_pow.coeff.pow(
            bigint_to_i64(&BigInt::from(k - 1)).unwrap_or(0) as i32
        ) * BigRational::from_integer(BigInt::from(k));
        let q = Term {
            coeff: &lt_diff.coeff / denom_c,
            powers: q_powers,
        };
        root = root.add(&Expr {
            terms: expand_term(q.coeff, q.powers),
        });
        if root.is_zero() {
            return None;
        }
    }
    None
}

fn exact_root(n: &BigInt, k: u32) -> Option<BigInt> {
    if n.is_negative() {
        return None;
    }
    let r = n.nth_root(k);
    if r.pow(k) == *n {
        Some(r)
    } else {
        None
    }
}

// =========================================================================
// Rational powers of rational constants
// =========================================================================

/// `c^q` for rational `c`, `q`: exact rational scale plus radicand bases
/// with exponents in (0,1).
fn rational_pow(
    c: &BigRational,
    q: &BigRational,
) -> Result<(BigRational, Vec<(Base, BigRational)>), ExprError> {
    if rat_is_integer(q) {
        let n = rat_floor(q);
        if c.is_zero() {
            return Err(ExprError::ZeroToNonPositive);
        }
        let a = bigint_to_i64(&n.abs()).ok_or(ExprError::NotAConstant)? as i32;
        let p = c.pow(a);
        let out = if n.is_negative() {
            BigRational::one() / p
        } else {
            p
        };
        return Ok((out, Vec::new()));
    }
    if c.is_negative() {
        return Err(ExprError::NegativeRadicand);
    }
    if c.is_zero() {
        return Err(ExprError::ZeroToNonPositive);
    }
    let mut out_c = BigRational::one();
    let mut rads: Vec<(Base, BigRational)> = Vec::new();
    let mut push_factor = |p: BigInt, e: BigRational| {
        let fl = rat_floor(&e);
        let fr = &e - BigRational::from_integer(fl.clone());
        if !fl.is_zero() {
            out_c = &out_c * bigint_pow_rat(&p, &fl);
        }
        if !fr.is_zero() {
            rads.push((Base::Rad(p), fr));
        }
    };
    for (p, e) in factor_integer(c.numer()) {
        push_factor(p, BigRational::from_integer(BigInt::from(e)) * q);
    }
    for (p, e) in factor_integer(c.denom()) {
        push_factor(p, -BigRational::from_integer(BigInt::from(e)) * q);
    }
    rads.sort_by(|a, b| a.0.cmp(&b.0));
    // Merge duplicate radicand bases (same prime from numer & denom impossible,
    // but keep this robust).
    let mut merged: Vec<(Base, BigRational)> = Vec::new();
    for (b, e) in rads {
        match merged.last_mut() {
            Some((lb, le)) if *lb == b => *le += e,
            _ => merged.push((b, e)),
        }
    }
    merged.retain(|(_, e)| !e.is_zero());
    Ok((out_c, merged))
}

/// Factor a positive integer by trial division (plus perfect-power fallback
/// for any large remainder). Factors in the corpus are tiny.
fn factor_integer(n: &BigInt) -> Vec<(BigInt, i64)> {
    let mut n = n.abs();
    let mut out: Vec<(BigInt, i64)> = Vec::new();
    if n.is_one() || n.is_zero() {
        return out;
    }
    let mut d = BigInt::from(2);
    let limit = BigInt::from(100_000);
    while &d * &d <= n && d <= limit {
        let mut e = 0i64;
        while (&n % &d).is_zero() {
            n = &n / &d;
            e += 1;
        }
        if e > 0 {
            out.push((d.clone(), e));
        }
        d += 1;
    }
    if !n.is_one() {
        // Reduce a large remainder to a perfect power if possible.
        let mut base = n.clone();
        let mut mult = 1i64;
        for k in [2u32, 3, 5] {
            loop {
                match exact_root(&base, k) {
                    Some(r) if r > BigInt::one() => {
                        base = r;
                        mult *= k as i64;
                    }
                    _ => break,
                }
            }
        }
        out.push((base, mult));
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

// =========================================================================
// Tests
// =========================================================================

#[cfg(test)]
mod tests {
    use super::*;

    fn u(i: u32) -> Expr {
        Expr::coord(JetCoord::xjet(i))
    }

    #[test]
    fn sum_and_cancellation() {
        let e = u(1).add(&Expr::one()); // u_x + 1
        let sq = e.mul(&e); // u_x^2 + 2u_x + 1
        let back = sq
            .sub(&u(1).mul(&u(1)))
            .sub(&u(1).scale_int(2))
            .sub(&Expr::one());
        assert!(back.is_zero());
    }

    #[test]
    fn sqrt_times_sqrt_collapses() {
        let r = u(3).sqrt().unwrap();
        let prod = r.mul(&r);
        assert_eq!(prod, u(3));
    }

    #[test]
    fn inverse_sqrt_exponent() {
        let e = Expr::one().div(&u(3).sqrt().unwrap()).unwrap();
        assert_eq!(e.terms().len(), 1);
        let t = &e.terms()[0];
        assert_eq!(t.powers.len(), 1);
        assert_eq!(
            t.powers[0].1,
            BigRational::new(BigInt::from(-1), BigInt::from(2))
        );
    }

    #[test]
    fn composite_denominator_cancels() {
        // (u_x*B + B) / B = u_x + 1 with B = u_x + 2
        let b = u(1).add(&Expr::from_int(2));
        let n = u(1).mul(&b).add(&b);
        let q = n.div(&b).unwrap();
        assert_eq!(q, u(1).add(&Expr::one()));
    }

    #[test]
    fn partial_fraction_routes_agree() {
        // 1/(u_x(u_x+1)) == 1/u_x - 1/(u_x+1)
        let a = Expr::one()
            .div(&u(1).mul(&u(1).add(&Expr::one())))
            .unwrap();
        let b = Expr::one()
            .div(&u(1))
            .unwrap()
            .sub(&Expr::one().div(&u(1).add(&Expr::one())).unwrap());
        assert!(a.sub(&b).is_zero());
    }

    #[test]
    fn radical_of_perfect_square_reduces() {
        // sqrt(u_x^2 + 2u_x + 1) = u_x + 1
        let sq = u(1).mul(&u(1)).add(&u(1).scale_int(2)).add(&Expr::one());
        let r = sq.sqrt().unwrap();
        assert_eq!(r, u(1).add(&Expr::one()));
    }

    #[test]
    fn radical_residue_expansion() {
        // (u+v)^(3/2) = (u+v) * (u+v)^(1/2); squaring gives (u+v)^3.
        let s = u(0).add(&u(1));
        let p = s.pow_rational(&BigRational::new(BigInt::from(3), BigInt::from(2))).unwrap();
        let sq = p.mul(&p);
        assert_eq!(sq, s.pow_int(3).unwrap());
    }

    #[test]
    fn rational_pow_of_constants() {
        // 8^(1/3) = 2; 12^(1/2) = 2*sqrt(3)
        let e = Expr::from_int(8)
            .pow_rational(&BigRational::new(BigInt::from(1), BigInt::from(3)))
            .unwrap();
        assert_eq!(e, Expr::from_int(2));
        let s = Expr::from_int(12).sqrt().unwrap();
        let t = &s.terms()[0];
        assert_eq!(t.coeff, BigRational::from_integer(BigInt::from(2)));
        assert_eq!(t.powers.len(), 1);
        assert!(matches!(&t.powers[0].0, Base::Rad(n) if *n == BigInt::from(3)));
    }

    #[test]
    fn negative_power_of_sum_inverts() {
        let s = u(1).add(&Expr::one());
        let inv = s.pow_int(-1).unwrap();
        let prod = inv.mul(&s);
        assert!(prod.is_one());
    }

    #[test]
    fn log_splits_products() {
        // log(4 u_x^2) = 4·log-ish pieces: 2 log 2 + 2 log u_x
        let e = u(1).mul(&u(1)).scale_int(4);
        let l = e.log().unwrap();
        let l2 = Expr::log(&Expr::from_int(2)).unwrap();
        let lu = u(1).log().unwrap();
        assert!(l.sub(&l2.scale_int(2)).sub(&lu.scale_int(2)).is_zero());
    }

    #[test]
    fn zero_tests() {
        assert!(Expr::zero().zero_test().is_definitely_zero());
        assert_eq!(u(0).zero_test(), ZeroTest::Definite(false));
    }

    #[test]
    fn mixed_sign_fraction_normal_form_is_confluent() {
        // u·B^(-1/2) + v·B^(1/2) built two ways
        let b = u(1).add(&Expr::from_int(2));
        let bh = b.sqrt().unwrap();
        let binvh = Expr::one().div(&bh).unwrap();
        let route1 = u(0).mul(&binvh).add(&u(2).mul(&bh));
        let inner = u(0).div(&b).unwrap().add(&u(2));
        let route2 = inner.mul(&bh);
        assert!(route1.sub(&route2).is_zero());
    }
}
