//! The variational bicomplex: contact-form wedge algebra, the horizontal and
//! vertical differentials, Euler and interior-Euler operators, vertical
//! homotopy, and horizontal integration.
//!
//! Forms are stored as maps from canonical basis monomials to coefficient
//! expressions. A basis monomial is (dt?, dx?, strictly decreasing contact
//! index list); the wedge normalizes every product back to this basis with
//! the sign absorbed into the coefficient, so `is_zero` on forms inherits
//! the completeness of the scalar normal form.
//!
//! The vertical homotopy is graded by fiber scaling weight: on components of
//! nonzero total weight the Cartan formula gives the primitive algebraically
//! (contract with the radial field, divide by the weight); weight-zero
//! components fall back to a one-variable staircase of de Rham homotopies
//! anchored at a configurable base point.

use crate::expr::{Base, Expr, ExprError, JetCoord, Var};
use crate::jet::{d_x_free, EqContext, JetError, SpaceTag};
use num::{BigRational, Zero};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormError {
    #[error("space mismatch: expected {expected}, found {found}")]
    SpaceMismatch { expected: SpaceTag, found: SpaceTag },
    #[error("dt is not a basis form on the spatial slice")]
    DtOnSpatialSlice,
    #[error("t-jet contact index ({0},{1}) is not valid on the {2}")]
    TJetContact(u32, u32, SpaceTag),
    #[error("form already has top horizontal degree for the {0}")]
    TopHorizontal(SpaceTag),
    #[error("equation context required for the horizontal differential on the equation manifold")]
    MissingContext,
    #[error("form is not of the expected grade (expected {expected}, found {found})")]
    GradeMismatch { expected: String, found: String },
    #[error("form is not a functional form (not fixed by the interior Euler operator)")]
    NotFunctionalForm,
    #[error("{op} left the supported closed-form fragment: {detail}; try a different base point")]
    OutsideFragment { op: &'static str, detail: String },
    #[error("expression is not a total x-derivative (Euler residual {0})")]
    NotXExact(Expr),
    #[error("horizontal primitive does not match the t-component (residual {0})")]
    TMatchFailed(Expr),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Jet(#[from] JetError),
}

// =========================================================================
// Basis monomials
// =========================================================================

/// Canonical exterior monomial: optional dt, optional dx, then contact
/// factors θ^{(a,i)} in strictly decreasing (a,i) order. On the equation
/// manifold and spatial slice all contact indices have a = 0.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct BasisMono {
    pub dt: bool,
    pub dx: bool,
    pub contact: Vec<(u32, u32)>,
}

/// Total order on single basis factors: dt < dx < θ's in decreasing index
/// order (so the highest θ comes first among contact factors).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum FactorKey {
    Dt,
    Dx,
    Th(std::cmp::Reverse<(u32, u32)>),
}

impl BasisMono {
    pub fn scalar() -> Self {
        BasisMono {
            dt: false,
            dx: false,
            contact: Vec::new(),
        }
    }

    pub fn grade(&self) -> (u32, u32) {
        (
            self.dt as u32 + self.dx as u32,
            self.contact.len() as u32,
        )
    }

    fn factors(&self) -> Vec<FactorKey> {
        let mut out = Vec::with_capacity(2 + self.contact.len());
        if self.dt {
            out.push(FactorKey::Dt);
        }
        if self.dx {
            out.push(FactorKey::Dx);
        }
        for c in &self.contact {
            out.push(FactorKey::Th(std::cmp::Reverse(*c)));
        }
        out
    }

    fn from_factors(factors: &[FactorKey]) -> Self {
        let mut m = BasisMono::scalar();
        for f in factors {
            match f {
                FactorKey::Dt => m.dt = true,
                FactorKey::Dx => m.dx = true,
                FactorKey::Th(std::cmp::Reverse(c)) => m.contact.push(*c),
            }
        }
        m
    }

    /// Merge two canonical monomials, counting the inversions needed to
    /// interleave them; returns the sign or None when a factor repeats.
    fn wedge(&self, other: &BasisMono) -> Option<(i8, BasisMono)> {
        let a = self.factors();
        let b = other.factors();
        let mut merged = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0usize, 0usize);
        let mut inversions = 0usize;
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Equal => return None,
                std::cmp::Ordering::Less => {
                    merged.push(a[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    // b[j] jumps over the remaining factors of a.
                    inversions += a.len() - i;
                    merged.push(b[j]);
                    j += 1;
                }
            }
        }
        merged.extend_from_slice(&a[i..]);
        merged.extend_from_slice(&b[j..]);
        let sign = if inversions % 2 == 0 { 1 } else { -1 };
        Some((sign, BasisMono::from_factors(&merged)))
    }

    /// Remove the contact factor with index `c`; returns the parity sign of
    /// its position among all factors (interior product rule).
    fn remove_contact(&self, c: (u32, u32)) -> Option<(i8, BasisMono)> {
        let pos = self.contact.iter().position(|&x| x == c)?;
        let offset = self.dt as usize + self.dx as usize + pos;
        let mut m = self.clone();
        m.contact.remove(pos);
        let sign = if offset % 2 == 0 { 1 } else { -1 };
        Some((sign, m))
    }
}

impl fmt::Display for BasisMono {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = Vec::new();
        if self.dt {
            parts.push("dt".into());
        }
        if self.dx {
            parts.push("dx".into());
        }
        for (a, i) in &self.contact {
            if *a == 0 {
                parts.push(format!("th{i}"));
            } else {
                parts.push(format!("th[{a},{i}]"));
            }
        }
        if parts.is_empty() {
            write!(f, "1")
        } else {
            write!(f, "{}", parts.join("^"))
        }
    }
}

// =========================================================================
// Forms
// =========================================================================

/// A differential form in the canonical contact basis on one of the three
/// spaces. Coefficients are scalar expressions; zero coefficients pruned.
#[derive(Clone, Debug)]
pub struct Form {
    space: SpaceTag,
    terms: BTreeMap<BasisMono, Expr>,
}

impl Form {
    pub fn zero(space: SpaceTag) -> Self {
        Form {
            space,
            terms: BTreeMap::new(),
        }
    }

    /// A scalar (grade (0,0)) form.
    pub fn scalar(space: SpaceTag, c: Expr) -> Self {
        let mut f = Form::zero(space);
        f.add_term(BasisMono::scalar(), c);
        f
    }

    pub fn dt(space: SpaceTag) -> Result<Self, FormError> {
        if space == SpaceTag::Sb {
            return Err(FormError::DtOnSpatialSlice);
        }
        let mut f = Form::zero(space);
        f.add_term(
            BasisMono {
                dt: true,
                dx: false,
                contact: vec![],
            },
            Expr::one(),
        );
        Ok(f)
    }

    pub fn dx(space: SpaceTag) -> Self {
        let mut f = Form::zero(space);
        f.add_term(
            BasisMono {
                dt: false,
                dx: true,
                contact: vec![],
            },
            Expr::one(),
        );
        f
    }

    /// Contact basis 1-form θ^{(a,i)} (a must be 0 off the free jet space).
    pub fn theta(space: SpaceTag, a: u32, i: u32) -> Result<Self, FormError> {
        if space != SpaceTag::Free && a > 0 {
            return Err(FormError::TJetContact(a, i, space));
        }
        let mut f = Form::zero(space);
        f.add_term(
            BasisMono {
                dt: false,
                dx: false,
                contact: vec![(a, i)],
            },
            Expr::one(),
        );
        Ok(f)
    }

    /// Contact 1-form Σ r_i θ^i from coefficients (x-jet spaces).
    pub fn contact_one_form(space: SpaceTag, coeffs: &[(u32, Expr)]) -> Result<Self, FormError> {
        let mut f = Form::zero(space);
        for (i, c) in coeffs {
            f = f.add(&Form::theta(space, 0, *i)?.scale(c))?;
        }
        Ok(f)
    }

    pub fn space(&self) -> SpaceTag {
        self.space
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&BasisMono, &Expr)> {
        self.terms.iter()
    }

    pub fn coeff(&self, mono: &BasisMono) -> Expr {
        self.terms.get(mono).cloned().unwrap_or_else(Expr::zero)
    }

    pub fn add_term(&mut self, mono: BasisMono, c: Expr) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(mono.clone()).or_insert_with(Expr::zero);
        *entry = entry.add(&c);
        if entry.is_zero() {
            self.terms.remove(&mono);
        }
    }

    fn check_space(&self, other: &Form) -> Result<(), FormError> {
        if self.space != other.space {
            return Err(FormError::SpaceMismatch {
                expected: self.space,
                found: other.space,
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Form) -> Result<Form, FormError> {
        self.check_space(other)?;
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Form) -> Result<Form, FormError> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Form {
        self.scale_int(-1)
    }

    pub fn scale(&self, s: &Expr) -> Form {
        let mut out = Form::zero(self.space);
        for (m, c) in &self.terms {
            out.add_term(m.clone(), c.mul(s));
        }
        out
    }

    pub fn scale_int(&self, s: i64) -> Form {
        let mut out = Form::zero(self.space);
        for (m, c) in &self.terms {
            out.add_term(m.clone(), c.scale_int(s));
        }
        out
    }

    pub fn scale_rational(&self, s: &BigRational) -> Form {
        let mut out = Form::zero(self.space);
        for (m, c) in &self.terms {
            out.add_term(m.clone(), c.scale(s));
        }
        out
    }

    pub fn wedge(&self, other: &Form) -> Result<Form, FormError> {
        self.check_space(other)?;
        let mut out = Form::zero(self.space);
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                if let Some((sign, m)) = m1.wedge(m2) {
                    out.add_term(m, c1.mul(c2).scale_int(sign as i64));
                }
            }
        }
        Ok(out)
    }

    /// Homogeneous grade, when all terms agree.
    pub fn grade(&self) -> Option<(u32, u32)> {
        let mut it = self.terms.keys().map(|m| m.grade());
        let first = it.next()?;
        for g in it {
            if g != first {
                return None;
            }
        }
        Some(first)
    }

    /// Contact (vertical) degree when homogeneous.
    pub fn contact_degree(&self) -> Option<u32> {
        self.grade().map(|(_, s)| s)
    }

    pub fn map_coeffs(&self, f: impl Fn(&Expr) -> Expr) -> Form {
        let mut out = Form::zero(self.space);
        for (m, c) in &self.terms {
            out.add_term(m.clone(), f(c));
        }
        out
    }

    pub fn try_map_coeffs<E>(&self, f: impl Fn(&Expr) -> Result<Expr, E>) -> Result<Form, E> {
        let mut out = Form::zero(self.space);
        for (m, c) in &self.terms {
            out.add_term(m.clone(), f(c)?);
        }
        Ok(out)
    }

    /// Jet coordinates appearing in coefficients or contact indices.
    pub fn coord_support(&self) -> BTreeSet<JetCoord> {
        let mut out = BTreeSet::new();
        for (m, c) in &self.terms {
            out.extend(c.coord_support());
            for (a, i) in &m.contact {
                out.insert(JetCoord::U { a: *a, i: *i });
            }
        }
        out
    }

    /// Drop the scalar terms of every coefficient that involve no fiber
    /// coordinate (they are d_V-closed, so this preserves the vertical
    /// derivative of the form).
    pub fn strip_fiber_free(&self) -> Form {
        self.map_coeffs(|c| c.fiber_dependent_part())
    }

    /// Extract the coefficient of a pure (2,0) form `L dt∧dx`.
    pub fn dtdx_coefficient(&self) -> Option<Expr> {
        let mono = BasisMono {
            dt: true,
            dx: true,
            contact: vec![],
        };
        if self.terms.keys().all(|m| *m == mono) {
            Some(self.coeff(&mono))
        } else {
            None
        }
    }
}

impl fmt::Display for Form {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            if m.grade() == (0, 0) {
                write!(f, "({c})")?;
            } else {
                write!(f, "{m} * ({c})")?;
            }
        }
        Ok(())
    }
}

// =========================================================================
// Vertical and horizontal differentials
// =========================================================================

/// Vertical differential: d_V(c·μ) = Σ_J (∂c/∂u_J) θ^J ∧ μ (θ's are
/// d_V-closed).
pub fn d_vertical(w: &Form) -> Form {
    let mut out = Form::zero(w.space);
    for (m, c) in &w.terms {
        for v in c.coord_support() {
            if let JetCoord::U { a, i } = v {
                let theta = BasisMono {
                    dt: false,
                    dx: false,
                    contact: vec![(a, i)],
                };
                if let Some((sign, mono)) = theta.wedge(m) {
                    out.add_term(mono, c.partial(v).scale_int(sign as i64));
                }
            }
        }
    }
    out
}

/// Total-x derivation on forms (even derivation): coefficients get the
/// space's total x-derivative, contact factors shift θ^{(a,i)} → θ^{(a,i+1)}.
pub fn x_derivation(w: &Form) -> Form {
    let mut out = Form::zero(w.space);
    for (m, c) in &w.terms {
        out.add_term(m.clone(), d_x_free(c));
        for &(a, i) in &m.contact {
            let (sign, rest) = m.remove_contact((a, i)).unwrap();
            let shifted = BasisMono {
                dt: false,
                dx: false,
                contact: vec![(a, i + 1)],
            };
            if let Some((s2, mono)) = shifted.wedge(&rest) {
                out.add_term(mono, c.scale_int((sign * s2) as i64));
            }
        }
    }
    out
}

/// Total-t derivation on free-space forms: ϑ^{(a,i)} → ϑ^{(a+1,i)}.
pub fn t_derivation_free(w: &Form) -> Form {
    let mut out = Form::zero(w.space);
    for (m, c) in &w.terms {
        out.add_term(m.clone(), crate::jet::d_t_free(c));
        for &(a, i) in &m.contact {
            let (sign, rest) = m.remove_contact((a, i)).unwrap();
            let shifted = BasisMono {
                dt: false,
                dx: false,
                contact: vec![(a + 1, i)],
            };
            if let Some((s2, mono)) = shifted.wedge(&rest) {
                out.add_term(mono, c.scale_int((sign * s2) as i64));
            }
        }
    }
    out
}

/// The invariant T-derivation on equation-manifold forms: coefficients get
/// T, and T(θ^i) = Xⁱ(d_V K) from the structure equations.
pub fn t_derivation(w: &Form, ctx: &EqContext) -> Result<Form, FormError> {
    let mut out = Form::zero(w.space);
    for (m, c) in &w.terms {
        out.add_term(m.clone(), ctx.t(c)?);
        for &(a, i) in &m.contact {
            let (sign, rest) = m.remove_contact((a, i)).unwrap();
            let mut rest_form = Form::zero(w.space);
            rest_form.add_term(rest, c.scale_int(sign as i64));
            let t_theta = t_of_theta(ctx, i, w.space)?;
            out = out.add(&t_theta.wedge(&rest_form)?)?;
        }
    }
    Ok(out)
}

/// T(θ^i) = Xⁱ(d_V K) as a contact 1-form.
fn t_of_theta(ctx: &EqContext, i: u32, space: SpaceTag) -> Result<Form, FormError> {
    let mut form = Form::zero(space);
    for v in ctx.k().coord_support() {
        if let JetCoord::U { a: 0, i: j } = v {
            form = form.add(&Form::theta(space, 0, j)?.scale(&ctx.k().partial(v)))?;
        }
    }
    for _ in 0..i {
        form = x_derivation(&form);
    }
    Ok(form)
}

/// Horizontal differential. On the free jet space d_H = dx∧D_x + dt∧D_t
/// with the free structure equations; on the equation manifold
/// d_H = dx∧X + dt∧T (context required); on the spatial slice d_H = dx∧X.
pub fn d_horizontal(w: &Form, ctx: Option<&EqContext>) -> Result<Form, FormError> {
    let max_r = if w.space == SpaceTag::Sb { 1 } else { 2 };
    if !w.is_zero() && w.terms.keys().all(|m| m.grade().0 >= max_r) {
        return Err(FormError::TopHorizontal(w.space));
    }
    let dxf = Form::dx(w.space);
    match w.space {
        SpaceTag::Free => {
            let part_x = dxf.wedge(&x_derivation(w))?;
            let part_t = Form::dt(w.space)?.wedge(&t_derivation_free(w))?;
            part_x.add(&part_t)
        }
        SpaceTag::Eqn => {
            let ctx = ctx.ok_or(FormError::MissingContext)?;
            let part_x = dxf.wedge(&x_derivation(w))?;
            let part_t = Form::dt(w.space)?.wedge(&t_derivation(w, ctx)?)?;
            part_x.add(&part_t)
        }
        SpaceTag::Sb => dxf.wedge(&x_derivation(w)),
    }
}

/// Projection from the equation manifold to the spatial slice: drops every
/// dt-carrying term and relabels θ^i → θ^i_E.
pub fn project_semibasic(w: &Form) -> Result<Form, FormError> {
    if w.space != SpaceTag::Eqn {
        return Err(FormError::SpaceMismatch {
            expected: SpaceTag::Eqn,
            found: w.space,
        });
    }
    let mut out = Form::zero(SpaceTag::Sb);
    for (m, c) in &w.terms {
        if m.dt {
            continue;
        }
        out.add_term(m.clone(), c.clone());
    }
    Ok(out)
}

// =========================================================================
// Euler operator
// =========================================================================

/// Euler-Lagrange expression of a scalar density. Free jet space:
/// Σ (−D_t)ᵃ(−D_x)ⁱ ∂L/∂u_{a,i}; x-jet spaces: Σ (−D_x)ⁱ ∂L/∂u_i.
pub fn euler_lagrange(l: &Expr, space: SpaceTag) -> Result<Expr, JetError> {
    if space != SpaceTag::Free {
        crate::jet::total_x(l)?; // validates the space
    }
    let mut out = Expr::zero();
    for v in l.coord_support() {
        if let JetCoord::U { a, i } = v {
            let mut term = l.partial(v);
            for _ in 0..i {
                term = d_x_free(&term).neg();
            }
            for _ in 0..a {
                term = crate::jet::d_t_free(&term).neg();
            }
            out = out.add(&term);
        }
    }
    Ok(out)
}

// =========================================================================
// Interior Euler operator
// =========================================================================

/// Interior product with ∂_{u_{a,i}} (picks out the matching contact factor
/// with its position sign).
pub fn contract(w: &Form, a: u32, i: u32) -> Form {
    let mut out = Form::zero(w.space);
    for (m, c) in &w.terms {
        if let Some((sign, rest)) = m.remove_contact((a, i)) {
            out.add_term(rest, c.scale_int(sign as i64));
        }
    }
    out
}

fn contact_indices(w: &Form) -> BTreeSet<(u32, u32)> {
    let mut out = BTreeSet::new();
    for m in w.terms.keys() {
        out.extend(m.contact.iter().copied());
    }
    out
}

/// Integration-by-parts operator J and the interior Euler operator
/// I = (1/s)·θ⁰∧J on top-horizontal forms of contact degree s ≥ 1.
/// On the free jet space J(κ) = Σ (−1)^{a+i} D_xⁱD_tᵃ(∂_{u_{a,i}}⌋κ); on the
/// spatial slice J(κ) = Σ (−D_x)ⁱ(∂_{u_i}⌋κ).
pub fn interior_euler(w: &Form) -> Result<(Form, Form), FormError> {
    let (top_r, theta0) = match w.space {
        SpaceTag::Free => (2, Form::theta(SpaceTag::Free, 0, 0)?),
        SpaceTag::Sb => (1, Form::theta(SpaceTag::Sb, 0, 0)?),
        SpaceTag::Eqn => {
            return Err(FormError::SpaceMismatch {
                expected: SpaceTag::Sb,
                found: SpaceTag::Eqn,
            })
        }
    };
    if w.is_zero() {
        return Ok((Form::zero(w.space), Form::zero(w.space)));
    }
    let grade = w.grade().ok_or_else(|| FormError::GradeMismatch {
        expected: format!("homogeneous ({top_r}, s≥1)"),
        found: "mixed".into(),
    })?;
    if grade.0 != top_r || grade.1 == 0 {
        return Err(FormError::GradeMismatch {
            expected: format!("({top_r}, s≥1)"),
            found: format!("({}, {})", grade.0, grade.1),
        });
    }
    let mut j = Form::zero(w.space);
    for (a, i) in contact_indices(w) {
        let mut piece = contract(w, a, i);
        for _ in 0..i {
            piece = x_derivation(&piece);
        }
        for _ in 0..a {
            piece = t_derivation_free(&piece);
        }
        let sign = if (a + i) % 2 == 0 { 1 } else { -1 };
        j = j.add(&piece.scale_int(sign))?;
    }
    let s = BigRational::from_integer(grade.1.into());
    let i_form = theta0.wedge(&j)?.scale_rational(&s.recip());
    Ok((j, i_form))
}

/// δ_V = I ∘ d_V on functional forms (inputs must be I-fixed).
pub fn delta_v(w: &Form) -> Result<Form, FormError> {
    let (_, iw) = interior_euler(w)?;
    if !iw.sub(w)?.is_zero() {
        return Err(FormError::NotFunctionalForm);
    }
    let (_, out) = interior_euler(&d_vertical(w))?;
    Ok(out)
}

// =========================================================================
// Vertical homotopy
// =========================================================================

/// Fiber base point for homotopy integrals; coordinates not listed sit at
/// zero.
#[derive(Clone, Debug, Default)]
pub struct BasePoint {
    values: BTreeMap<JetCoord, BigRational>,
}

impl BasePoint {
    pub fn origin() -> Self {
        BasePoint::default()
    }

    pub fn set(&mut self, c: JetCoord, v: BigRational) {
        self.values.insert(c, v);
    }

    pub fn with(mut self, c: JetCoord, n: i64) -> Self {
        self.set(c, BigRational::from_integer(n.into()));
        self
    }

    pub fn value(&self, c: JetCoord) -> BigRational {
        self.values.get(&c).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn value_expr(&self, c: JetCoord) -> Expr {
        Expr::from_rational(self.value(c))
    }

    /// Parse "u_x=1, u=2" style assignments.
    pub fn parse(src: &str) -> Result<Self, ExprError> {
        let mut bp = BasePoint::origin();
        for part in src.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let (name, val) = part
                .split_once('=')
                .ok_or_else(|| ExprError::Parse(format!("base point entry `{part}` needs `coord=value`")))?;
            let coord = JetCoord::parse_name(name.trim())
                .ok_or_else(|| ExprError::Parse(format!("unknown coordinate `{}`", name.trim())))?;
            let e = crate::expr::parse::parse_expr(val.trim(), &crate::expr::parse::Declarations::new())?;
            let r = e.as_constant().ok_or_else(|| {
                ExprError::Parse(format!("base point value `{}` is not a rational constant", val.trim()))
            })?;
            bp.set(coord, r);
        }
        Ok(bp)
    }
}

/// Total fiber-scaling weight of a single-term coefficient: the sum of the
/// exponents of fiber jet coordinates, or None when a factor (opaque symbol,
/// logarithm, inhomogeneous polynomial) has no well-defined weight.
fn term_fiber_weight(term: &crate::expr::Term) -> Option<BigRational> {
    let mut total = BigRational::zero();
    for (base, exp) in &term.powers {
        match base {
            Base::Coord(c) => {
                if c.is_fiber() {
                    total += exp.clone();
                }
            }
            Base::Param(_) | Base::Rad(_) => {}
            Base::Opaque(r) => {
                if r.sym.args.iter().any(|a| a.is_fiber()) {
                    return None;
                }
            }
            Base::Log(g) => {
                if g.coord_support().iter().any(|c| c.is_fiber()) {
                    return None;
                }
            }
            Base::Poly(p) => {
                let d = poly_fiber_weight(p)?;
                total += d * exp.clone();
            }
        }
    }
    Some(total)
}

/// Weight of a multi-term polynomial when all its monomials agree.
fn poly_fiber_weight(p: &Expr) -> Option<BigRational> {
    let mut weight: Option<BigRational> = None;
    for t in p.terms() {
        let w = term_fiber_weight(t)?;
        match &weight {
            None => weight = Some(w),
            Some(prev) if *prev == w => {}
            _ => return None,
        }
    }
    weight
}

/// ι_R with R = Σ (u_J − b_J) ∂_{u_J}, contracting over the contact factors
/// present in the form.
fn radial_contraction(w: &Form, base: &BasePoint) -> Form {
    let mut out = Form::zero(w.space);
    for (a, i) in contact_indices(w) {
        let c = JetCoord::U { a, i };
        let factor = Expr::coord(c).sub(&base.value_expr(c));
        out = out
            .add(&contract(w, a, i).scale(&factor))
            .expect("same space");
    }
    out
}

/// Vertical homotopy h with d_V(h(w)) + h(d_V(w)) = w on contact degree
/// ≥ 1. Components of nonzero total scaling weight use the algebraic Cartan
/// formula h = ι_R/weight (radial field centered at the zero fiber); the
/// weight-zero remainder uses a staircase of one-variable de Rham homotopies
/// anchored at `base`.
pub fn vertical_homotopy(w: &Form, base: &BasePoint) -> Result<Form, FormError> {
    let mut algebraic = Form::zero(w.space);
    let mut leftover = Form::zero(w.space);
    for (m, c) in &w.terms {
        let s = m.grade().1;
        if s == 0 {
            continue; // the homotopy vanishes on contact degree 0
        }
        let s_rat = BigRational::from_integer(s.into());
        for t in c.terms() {
            let coeff_expr = Expr::from_term(t.clone());
            match term_fiber_weight(t) {
                Some(wt) if !(wt.clone() + &s_rat).is_zero() => {
                    let tau = wt + &s_rat;
                    let mut single = Form::zero(w.space);
                    single.add_term(m.clone(), coeff_expr);
                    let contracted = radial_contraction(&single, &BasePoint::origin());
                    algebraic = algebraic.add(&contracted.scale_rational(&tau.recip()))?;
                }
                _ => leftover.add_term(m.clone(), coeff_expr),
            }
        }
    }
    let stair = staircase_homotopy(&leftover, base)?;
    algebraic.add(&stair)
}

/// Restrict a form at one fiber coordinate: substitute the base value in
/// coefficients and kill monomials containing that θ.
fn restrict_at(w: &Form, c: JetCoord, base: &BasePoint) -> Result<Form, FormError> {
    let (a, i) = match c {
        JetCoord::U { a, i } => (a, i),
        _ => return Ok(w.clone()),
    };
    let mut out = Form::zero(w.space);
    let val = base.value_expr(c);
    for (m, coeff) in &w.terms {
        if m.contact.contains(&(a, i)) {
            continue;
        }
        let newc = coeff.substitute_one(c, &val).map_err(|e| match e {
            ExprError::DivisionByZero | ExprError::ZeroToNonPositive => FormError::OutsideFragment {
                op: "vertical homotopy",
                detail: format!("base value for {c} hits a pole"),
            },
            other => FormError::Expr(other),
        })?;
        out.add_term(m.clone(), newc);
    }
    Ok(out)
}

/// Staircase of one-variable homotopies, processed in descending jet order:
/// h(w) = Σ_k ∫_{b_k}^{v_k} (∂_{v_k}⌋ w|_{v_1=b_1,…,v_{k−1}=b_{k−1}}) dṽ.
fn staircase_homotopy(w: &Form, base: &BasePoint) -> Result<Form, FormError> {
    if w.is_zero() {
        return Ok(Form::zero(w.space));
    }
    let mut vars: Vec<JetCoord> = w
        .coord_support()
        .into_iter()
        .filter(|c| c.is_fiber())
        .collect();
    vars.sort();
    vars.reverse(); // highest jets first
    let mut out = Form::zero(w.space);
    let mut current = w.clone();
    for v in vars {
        let (a, i) = match v {
            JetCoord::U { a, i } => (a, i),
            _ => unreachable!(),
        };
        let contracted = contract(&current, a, i);
        if !contracted.is_zero() {
            let integrated = contracted.try_map_coeffs(|c| -> Result<Expr, FormError> {
                let anti = c.antiderivative(&Var::Coord(v)).map_err(|e| {
                    FormError::OutsideFragment {
                        op: "vertical homotopy",
                        detail: format!("{e}"),
                    }
                })?;
                let at_base = anti.substitute_one(v, &base.value_expr(v)).map_err(|e| {
                    FormError::OutsideFragment {
                        op: "vertical homotopy",
                        detail: format!("lower limit: {e}"),
                    }
                })?;
                Ok(anti.sub(&at_base))
            })?;
            out = out.add(&integrated)?;
        }
        current = restrict_at(&current, v, base)?;
    }
    Ok(out)
}

// =========================================================================
// Horizontal integration and normal forms
// =========================================================================

/// Split `l = core + X(f)`: strips as much of the total-x-derivative part
/// as the closed-form fragment allows, working down from the top jet order.
pub fn strip_x_exact(l: &Expr) -> (Expr, Expr) {
    let mut core = l.clone();
    let mut f = Expr::zero();
    loop {
        let m = match core.max_xjet_order() {
            Some(m) if m >= 1 => m,
            _ => break,
        };
        if core.has_tjet() {
            break;
        }
        let top = JetCoord::xjet(m);
        let below = JetCoord::xjet(m - 1);
        let dl = core.partial(top);
        if dl.is_zero() {
            break;
        }
        let g = match dl.antiderivative(&Var::Coord(below)) {
            Ok(g) => g,
            Err(_) => break,
        };
        let next = core.sub(&d_x_free(&g));
        if next.max_xjet_order().map_or(0, |o| o) >= m && !next.partial(top).is_zero() {
            break; // no progress; leading part not linear enough
        }
        core = next;
        f = f.add(&g);
    }
    (core, f)
}

/// Solve X(f) = A (and optionally T(f) = B) in closed form. The result may
/// contain logarithms; callers convert a pure-log primitive into a
/// multiplicative witness.
pub fn horizontal_integrate(
    a: &Expr,
    b: Option<&Expr>,
    ctx: Option<&EqContext>,
) -> Result<Expr, FormError> {
    crate::jet::total_x(a)?;
    let residual = euler_lagrange(a, SpaceTag::Sb)?;
    match residual.zero_test() {
        crate::expr::ZeroTest::Definite(true) => {}
        _ => return Err(FormError::NotXExact(residual)),
    }
    let (rest, mut f) = strip_x_exact(a);
    // The remainder must be fiber-free; integrate it in x.
    if rest.coord_support().iter().any(|c| c.is_fiber()) {
        return Err(FormError::OutsideFragment {
            op: "horizontal integration",
            detail: format!("non-exact remainder {rest}"),
        });
    }
    if !rest.is_zero() {
        let g = rest
            .antiderivative(&Var::Coord(JetCoord::X))
            .map_err(|e| FormError::OutsideFragment {
                op: "horizontal integration",
                detail: format!("{e}"),
            })?;
        f = f.add(&g);
    }
    if let Some(b) = b {
        let ctx = ctx.ok_or(FormError::MissingContext)?;
        let c = b.sub(&ctx.t(&f)?);
        if c.coord_support().iter().any(|v| v != &JetCoord::T) {
            return Err(FormError::TMatchFailed(c));
        }
        if !c.is_zero() {
            let g = c
                .antiderivative(&Var::Coord(JetCoord::T))
                .map_err(|e| FormError::OutsideFragment {
                    op: "horizontal integration",
                    detail: format!("{e}"),
                })?;
            f = f.add(&g);
        }
        let t_res = ctx.t(&f)?.sub(b);
        if !t_res.is_zero() {
            return Err(FormError::TMatchFailed(t_res));
        }
    }
    let x_res = d_x_free(&f).sub(a);
    debug_assert!(x_res.is_zero(), "horizontal primitive residual {x_res}");
    Ok(f)
}

// =========================================================================
// Form literals
// =========================================================================

/// Interpret a parsed form literal on the given space.
pub fn form_from_ast(
    terms: &[crate::expr::parse::FormTermAst],
    space: SpaceTag,
) -> Result<Form, FormError> {
    use crate::expr::parse::BasisSym;
    let mut out = Form::zero(space);
    for t in terms {
        let mut prod = Form::scalar(space, t.coeff.clone());
        for sym in &t.chain {
            let factor = match sym {
                BasisSym::Dt => Form::dt(space)?,
                BasisSym::Dx => Form::dx(space),
                BasisSym::Th { k, sb } => {
                    let expected_sb = space == SpaceTag::Sb;
                    if *sb != expected_sb {
                        return Err(FormError::SpaceMismatch {
                            expected: space,
                            found: if *sb { SpaceTag::Sb } else { SpaceTag::Eqn },
                        });
                    }
                    Form::theta(space, 0, *k)?
                }
            };
            prod = prod.wedge(&factor)?;
        }
        let prod = if t.negate { prod.neg() } else { prod };
        out = out.add(&prod)?;
    }
    Ok(out)
}

pub fn parse_form(
    src: &str,
    decls: &crate::expr::parse::Declarations,
    space: SpaceTag,
) -> Result<Form, FormError> {
    let ast = crate::expr::parse::parse_form_ast(src, decls)?;
    form_from_ast(&ast, space)
}

// =========================================================================
// Tests
// =========================================================================

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse::{parse_expr, Declarations};

    fn e(src: &str) -> Expr {
        parse_expr(src, &Declarations::new()).unwrap()
    }

    fn kdv() -> EqContext {
        EqContext::new(e("u_xxx + u*u_x")).unwrap()
    }

    fn th(space: SpaceTag, i: u32) -> Form {
        Form::theta(space, 0, i).unwrap()
    }

    #[test]
    fn wedge_signs_and_cancellation() {
        let s = SpaceTag::Eqn;
        let a = th(s, 0).wedge(&th(s, 1)).unwrap();
        let b = th(s, 1).wedge(&th(s, 0)).unwrap();
        assert!(a.add(&b).unwrap().is_zero());
        assert!(th(s, 1).wedge(&th(s, 1)).unwrap().is_zero());
        // dx∧θ⁰∧θ¹ = −dx∧(θ¹∧θ⁰): stored on the decreasing basis
        let w = Form::dx(s).wedge(&a).unwrap();
        let mono = BasisMono {
            dt: false,
            dx: true,
            contact: vec![(0, 1), (0, 0)],
        };
        assert!(w.coeff(&mono).add(&Expr::one()).is_zero());
    }

    #[test]
    fn dv_of_scalar_density() {
        // d_V(u² dx) = 2u θ⁰∧dx = −2u dx∧θ⁰
        let w = Form::dx(SpaceTag::Eqn).scale(&e("u^2"));
        let dv = d_vertical(&w);
        let mono = BasisMono {
            dt: false,
            dx: true,
            contact: vec![(0, 0)],
        };
        assert!(dv.coeff(&mono).sub(&e("-2*u")).is_zero());
    }

    #[test]
    fn structure_equation_on_eqn() {
        // d_H θ⁰ = dx∧θ¹ + dt∧d_V K on the KdV manifold
        let ctx = kdv();
        let dh = d_horizontal(&th(SpaceTag::Eqn, 0), Some(&ctx)).unwrap();
        let dx_th1 = Form::dx(SpaceTag::Eqn).wedge(&th(SpaceTag::Eqn, 1)).unwrap();
        // d_V K = u_x θ⁰ + u θ¹ + θ³
        let dvk = Form::contact_one_form(
            SpaceTag::Eqn,
            &[(0, e("u_x")), (1, e("u")), (3, Expr::one())],
        )
        .unwrap();
        let expected = dx_th1
            .add(&Form::dt(SpaceTag::Eqn).unwrap().wedge(&dvk).unwrap())
            .unwrap();
        assert!(dh.sub(&expected).unwrap().is_zero());
    }

    #[test]
    fn mass_conservation_law_is_closed() {
        // d_H(u dx + (u_xx + ½u²) dt) = 0 on KdV
        let ctx = kdv();
        let kappa = Form::dx(SpaceTag::Eqn)
            .scale(&e("u"))
            .add(&Form::dt(SpaceTag::Eqn).unwrap().scale(&e("u_xx + (1/2)*u^2")))
            .unwrap();
        let dh = d_horizontal(&kappa, Some(&ctx)).unwrap();
        assert!(dh.is_zero(), "{dh}");
    }

    #[test]
    fn kdv_kappa_is_not_closed() {
        // d_H(−u_x dt) = −u_xx dx∧dt = u_xx dt∧dx
        let ctx = kdv();
        let kappa = Form::dt(SpaceTag::Eqn).unwrap().scale(&e("-u_x"));
        let dh = d_horizontal(&kappa, Some(&ctx)).unwrap();
        let dtdx = Form::dt(SpaceTag::Eqn)
            .unwrap()
            .wedge(&Form::dx(SpaceTag::Eqn))
            .unwrap();
        assert!(dh.sub(&dtdx.scale(&e("u_xx"))).unwrap().is_zero(), "{dh}");
    }

    #[test]
    fn differentials_square_to_zero_and_anticommute() {
        let ctx = kdv();
        let w = th(SpaceTag::Eqn, 1)
            .scale(&e("t*u*u_xx"))
            .add(&th(SpaceTag::Eqn, 0).scale(&e("x + u_x^2")))
            .unwrap();
        let dv2 = d_vertical(&d_vertical(&w));
        assert!(dv2.is_zero());
        let dh = |f: &Form| d_horizontal(f, Some(&ctx)).unwrap();
        let dhdh = dh(&dh(&w));
        assert!(dhdh.is_zero(), "{dhdh}");
        let mixed = dh(&d_vertical(&w)).add(&d_vertical(&dh(&w))).unwrap();
        assert!(mixed.is_zero(), "{mixed}");
    }

    #[test]
    fn free_space_structure_equations() {
        // d_H ϑ^{(a,i)} = dx∧ϑ^{(a,i+1)} + dt∧ϑ^{(a+1,i)}
        let v = Form::theta(SpaceTag::Free, 1, 1).unwrap();
        let dh = d_horizontal(&v, None).unwrap();
        let expected = Form::dx(SpaceTag::Free)
            .wedge(&Form::theta(SpaceTag::Free, 1, 2).unwrap())
            .unwrap()
            .add(
                &Form::dt(SpaceTag::Free)
                    .unwrap()
                    .wedge(&Form::theta(SpaceTag::Free, 2, 1).unwrap())
                    .unwrap(),
            )
            .unwrap();
        assert!(dh.sub(&expected).unwrap().is_zero());
        let dh2 = d_horizontal(&dh, None).unwrap();
        assert!(dh2.is_zero());
    }

    #[test]
    fn sb_peel() {
        // d_H^E θ^i_E = dx∧θ^{i+1}_E
        let dh = d_horizontal(&th(SpaceTag::Sb, 2), None).unwrap();
        let expected = Form::dx(SpaceTag::Sb).wedge(&th(SpaceTag::Sb, 3)).unwrap();
        assert!(dh.sub(&expected).unwrap().is_zero());
    }

    #[test]
    fn euler_kills_total_derivatives() {
        let f = e("u*u_xx + t*u_x^3 + x*u");
        let el = euler_lagrange(&d_x_free(&f), SpaceTag::Sb).unwrap();
        assert!(el.is_zero(), "{el}");
    }

    #[test]
    fn euler_on_free_space_identity() {
        // E(−½t·u_x·u_t + ½t·u_x·u_xxx + (1/6)t·u_x³)
        //   = u_x/2 + t·u_tx − t·u_xxxx − t·u_x·u_xx
        let l = e("-(1/2)*t*u_x*u_t + (1/2)*t*u_x*u_xxx + (1/6)*t*u_x^3");
        let el = euler_lagrange(&l, SpaceTag::Free).unwrap();
        let expected = e("(1/2)*u_x + t*u_tx - t*u_xxxx - t*u_x*u_xx");
        assert!(el.sub(&expected).is_zero(), "{el}");
    }

    #[test]
    fn euler_of_harry_dym_density() {
        let el = euler_lagrange(&e("-(1/2)*u_x^2/u^3"), SpaceTag::Sb).unwrap();
        let expected = e("u_xx/u^3 - (3/2)*u_x^2/u^4");
        assert!(el.sub(&expected).is_zero(), "{el}");
    }

    #[test]
    fn interior_euler_fixed_point() {
        // u_x·dx∧θ⁰∧θ¹ is I-fixed (symplectic shape with P = ½u_x²)
        let w = Form::dx(SpaceTag::Sb)
            .wedge(&th(SpaceTag::Sb, 0))
            .unwrap()
            .wedge(&th(SpaceTag::Sb, 1))
            .unwrap()
            .scale(&e("u_x"));
        let (_, iw) = interior_euler(&w).unwrap();
        assert!(iw.sub(&w).unwrap().is_zero(), "{iw}");
    }

    #[test]
    fn interior_euler_fixed_expansion() {
        // I(u·dx∧θ¹∧θ²) = −½u_xx dx∧θ⁰∧θ¹ − (3/2)u_x dx∧θ⁰∧θ² − u dx∧θ⁰∧θ³
        let w = Form::dx(SpaceTag::Sb)
            .wedge(&th(SpaceTag::Sb, 1))
            .unwrap()
            .wedge(&th(SpaceTag::Sb, 2))
            .unwrap()
            .scale(&e("u"));
        let (_, iw) = interior_euler(&w).unwrap();
        let dxw = Form::dx(SpaceTag::Sb).wedge(&th(SpaceTag::Sb, 0)).unwrap();
        let expected = dxw
            .wedge(&th(SpaceTag::Sb, 1))
            .unwrap()
            .scale(&e("-(1/2)*u_xx"))
            .add(&dxw.wedge(&th(SpaceTag::Sb, 2)).unwrap().scale(&e("-(3/2)*u_x")))
            .unwrap()
            .add(&dxw.wedge(&th(SpaceTag::Sb, 3)).unwrap().scale(&e("-u")))
            .unwrap();
        assert!(iw.sub(&expected).unwrap().is_zero(), "{iw}");
        // idempotence
        let (_, iiw) = interior_euler(&iw).unwrap();
        assert!(iiw.sub(&iw).unwrap().is_zero());
    }

    #[test]
    fn interior_euler_kills_horizontal_exact() {
        let eta = th(SpaceTag::Sb, 0)
            .wedge(&th(SpaceTag::Sb, 2))
            .unwrap()
            .scale(&e("u*u_x"));
        let dh = d_horizontal(&eta, None).unwrap();
        let (_, idh) = interior_euler(&dh).unwrap();
        assert!(idh.is_zero(), "{idh}");
    }

    #[test]
    fn source_forms_are_fixed_on_free_space() {
        let el = euler_lagrange(&e("(1/2)*u_x^2 + u^3"), SpaceTag::Free).unwrap();
        let src = Form::dt(SpaceTag::Free)
            .unwrap()
            .wedge(&Form::dx(SpaceTag::Free))
            .unwrap()
            .wedge(&Form::theta(SpaceTag::Free, 0, 0).unwrap())
            .unwrap()
            .scale(&el);
        let (_, isrc) = interior_euler(&src).unwrap();
        assert!(isrc.sub(&src).unwrap().is_zero());
    }

    #[test]
    fn delta_v_vanishes_on_euler_images() {
        let el = euler_lagrange(&e("u*u_x^2 + u_xx^2"), SpaceTag::Sb).unwrap();
        let w = Form::dx(SpaceTag::Sb)
            .wedge(&th(SpaceTag::Sb, 0))
            .unwrap()
            .scale(&el);
        let dv = delta_v(&w).unwrap();
        assert!(dv.is_zero(), "{dv}");
    }

    #[test]
    fn delta_v_detects_non_euler_source() {
        let w = Form::dx(SpaceTag::Sb)
            .wedge(&th(SpaceTag::Sb, 0))
            .unwrap()
            .scale(&e("u_x^2"));
        let dv = delta_v(&w).unwrap();
        assert!(!dv.is_zero());
    }

    #[test]
    fn delta_v_on_symplectic_shape() {
        // dx∧θ⁰∧θ¹·u_x is δ_V-closed
        let w = Form::dx(SpaceTag::Sb)
            .wedge(&th(SpaceTag::Sb, 0))
            .unwrap()
            .wedge(&th(SpaceTag::Sb, 1))
            .unwrap()
            .scale(&e("u_x"));
        let dv = delta_v(&w).unwrap();
        assert!(dv.is_zero(), "{dv}");
    }

    #[test]
    fn homotopy_inverts_dv_on_polynomial_forms() {
        let eta = th(SpaceTag::Sb, 0)
            .scale(&e("u^2*u_xx"))
            .add(&th(SpaceTag::Sb, 2).scale(&e("u*u_x")).wedge(&th(SpaceTag::Sb, 1)).unwrap())
            .unwrap();
        let w = d_vertical(&eta);
        let h = vertical_homotopy(&w, &BasePoint::origin()).unwrap();
        let back = d_vertical(&h);
        assert!(back.sub(&w).unwrap().is_zero());
    }

    #[test]
    fn homotopy_identity_on_general_forms() {
        // d_V h(w) + h(d_V w) = w for contact degree ≥ 1
        let w = th(SpaceTag::Sb, 1)
            .scale(&e("u*u_x + u_xx^3"))
            .add(&th(SpaceTag::Sb, 0).wedge(&th(SpaceTag::Sb, 2)).unwrap().scale(&e("x*u_x^2")))
            .unwrap();
        let base = BasePoint::origin();
        let lhs = d_vertical(&vertical_homotopy(&w, &base).unwrap())
            .add(&vertical_homotopy(&d_vertical(&w), &base).unwrap())
            .unwrap();
        assert!(lhs.sub(&w).unwrap().is_zero());
    }

    #[test]
    fn homotopy_weight_zero_uses_staircase() {
        // Schwarzian dx-part: −1/(2u_x²)·dx∧θ⁰∧θ¹ has total weight zero;
        // descending staircase with base u_x = 1 gives (1/(2u_x) − ½)dx∧θ⁰.
        let w = Form::dx(SpaceTag::Eqn)
            .wedge(&th(SpaceTag::Eqn, 0))
            .unwrap()
            .wedge(&th(SpaceTag::Eqn, 1))
            .unwrap()
            .scale(&e("-1/(2*u_x^2)"));
        let base = BasePoint::origin().with(JetCoord::xjet(1), 1);
        let h = vertical_homotopy(&w, &base).unwrap();
        let expected = Form::dx(SpaceTag::Eqn)
            .wedge(&th(SpaceTag::Eqn, 0))
            .unwrap()
            .scale(&e("1/(2*u_x) - 1/2"));
        assert!(h.sub(&expected).unwrap().is_zero(), "{h}");
        assert!(d_vertical(&h).sub(&w).unwrap().is_zero());
    }

    #[test]
    fn homotopy_pole_reports_fragment_error() {
        let w = Form::dx(SpaceTag::Eqn)
            .wedge(&th(SpaceTag::Eqn, 0))
            .unwrap()
            .wedge(&th(SpaceTag::Eqn, 1))
            .unwrap()
            .scale(&e("-1/(2*u_x^2)"));
        let err = vertical_homotopy(&w, &BasePoint::origin());
        assert!(matches!(err, Err(FormError::OutsideFragment { .. })));
    }

    #[test]
    fn strip_x_exact_reduces_to_core() {
        // ½u·u_xxxx reduces to ½u_xx² modulo X-exact terms
        let (core, f) = strip_x_exact(&e("(1/2)*u*u_xxxx"));
        assert!(core.sub(&e("(1/2)*u_xx^2")).is_zero(), "{core}");
        assert!(e("(1/2)*u*u_xxxx").sub(&core).sub(&d_x_free(&f)).is_zero());
    }

    #[test]
    fn horizontal_primitive_simple() {
        let f = horizontal_integrate(&e("u*u_x + 1"), None, None).unwrap();
        assert!(d_x_free(&f).sub(&e("u*u_x + 1")).is_zero());
        assert!(f.sub(&e("(1/2)*u^2 + x")).is_zero(), "{f}");
    }

    #[test]
    fn horizontal_primitive_with_time_component() {
        // A = 0, B = 1/t on the pcKdV manifold → f = log t
        let ctx = EqContext::new(e("u_xxx + (1/2)*u_x^2 - u/(2*t)")).unwrap();
        let f = horizontal_integrate(&Expr::zero(), Some(&e("1/t")), Some(&ctx)).unwrap();
        assert!(f.has_log());
        assert!(ctx.t(&f).unwrap().sub(&e("1/t")).is_zero());
        assert!(d_x_free(&f).is_zero());
    }

    #[test]
    fn horizontal_integrate_rejects_non_exact() {
        assert!(matches!(
            horizontal_integrate(&e("u"), None, None),
            Err(FormError::NotXExact(_))
        ));
    }

    #[test]
    fn projection_is_cochain_map() {
        let ctx = kdv();
        let kappa = th(SpaceTag::Eqn, 1)
            .scale(&e("u*u_x"))
            .add(&Form::dt(SpaceTag::Eqn).unwrap().scale(&e("u_xx")))
            .unwrap()
            .add(&Form::dx(SpaceTag::Eqn).scale(&e("u^2")))
            .unwrap();
        let lhs = project_semibasic(&d_horizontal(&kappa, Some(&ctx)).unwrap()).unwrap();
        let rhs = d_horizontal(&project_semibasic(&kappa).unwrap(), None).unwrap();
        assert!(lhs.sub(&rhs).unwrap().is_zero());
        let lhs_v = project_semibasic(&d_vertical(&kappa)).unwrap();
        let rhs_v = d_vertical(&project_semibasic(&kappa).unwrap());
        assert!(lhs_v.sub(&rhs_v).unwrap().is_zero());
    }

    #[test]
    fn form_literal_round_trip() {
        let d = Declarations::new();
        let w = parse_form("dx^th0^th1 * (1/(2*u_x^2)) - dt^th0 * u_xx", &d, SpaceTag::Eqn).unwrap();
        let dxw = Form::dx(SpaceTag::Eqn)
            .wedge(&th(SpaceTag::Eqn, 0))
            .unwrap()
            .wedge(&th(SpaceTag::Eqn, 1))
            .unwrap()
            .scale(&e("1/(2*u_x^2)"));
        let dtw = Form::dt(SpaceTag::Eqn)
            .unwrap()
            .wedge(&th(SpaceTag::Eqn, 0))
            .unwrap()
            .scale(&e("-u_xx"));
        assert!(w.sub(&dxw.add(&dtw).unwrap()).unwrap().is_zero());
    }
}
