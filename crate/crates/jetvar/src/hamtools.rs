//! Potential coordinates for Hamiltonian evolution equations and the
//! machinery connecting Hamiltonian pairs to variational operators:
//! jet-shift substitutions, the change-of-variables identity for Euler
//! operators, compatibility of a second Hamiltonian density, Dorfman's
//! symplectic family, and a pipeline that assembles a certified
//! variational witness from a bi-Hamiltonian pair.
//!
//! Throughout, the *depth-d reading* of a spatial density H(v, v_x, …)
//! is the substitution v_j → u_{j+d}: the evolution of v is rewritten as
//! an equation for a d-fold potential u with v = X^d(u). The engine has a
//! single fiber coordinate, so "v-jets" and "u-jets" share the same
//! symbols and the reading is purely an index shift.

use crate::cohomology::{helmholtz_and_lagrangian, CohomologyError, HelmholtzOutcome};
use crate::expr::{Expr, ExprError, JetCoord, Var};
use crate::forms::{euler_lagrange, horizontal_integrate, BasePoint, FormError};
use crate::jet::{total_x, DiffOperator, EqContext, JetError, SpaceTag};
use crate::oplab::{
    construct_q, is_symplectic, respace, verify_variational, OplabError, SymplecticAnalysis,
    VariationalWitness,
};
use num::BigRational;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HamError {
    #[error("substitution depth must be at least 1")]
    ZeroDepth,
    #[error("expression must live on the spatial jet slice (no t-derivatives of the fiber)")]
    TJetPresent,
    #[error("the coefficient function must depend on the base fiber coordinate alone")]
    CoefficientNotPointwise,
    #[error("{name} residual is nonzero: {residual}")]
    ResidualNonzero { name: &'static str, residual: String },
    #[error("no certified second density: {0}")]
    NotCompatible(String),
    #[error("shifted operator is not symplectic: {0}")]
    NotSymplectic(String),
    #[error(transparent)]
    Oplab(#[from] OplabError),
    #[error(transparent)]
    Form(#[from] FormError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Cohomology(#[from] CohomologyError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

fn half() -> BigRational {
    BigRational::new(1.into(), 2.into())
}

// =========================================================================
// Jet shifts
// =========================================================================

/// Substitute u_{(j)} → u_{(j+d)} throughout: read an expression in the
/// x-jets of the fiber as an expression in the x-jets of its d-fold
/// potential. Rejects t-derivative coordinates; the passive time and space
/// coordinates pass through unchanged.
pub fn shift_jets(e: &Expr, depth: u32) -> Result<Expr, HamError> {
    let mut binds = BTreeMap::new();
    for c in e.coord_support() {
        match c {
            JetCoord::U { a: 0, i } => {
                binds.insert(c, Expr::coord(JetCoord::xjet(i + depth)));
            }
            JetCoord::U { .. } => return Err(HamError::TJetPresent),
            JetCoord::T | JetCoord::X => {}
        }
    }
    if depth == 0 {
        return Ok(e.clone());
    }
    Ok(e.substitute(&binds)?)
}

/// Shift every coefficient of an x-only operator d jet levels up, keeping
/// its D_x powers.
pub fn shift_operator(
    op: &DiffOperator,
    depth: u32,
    space: SpaceTag,
) -> Result<DiffOperator, HamError> {
    if op.order() > op.x_order() {
        return Err(HamError::TJetPresent);
    }
    let mut out = DiffOperator::zero(space);
    for (i, c) in op.x_coeffs().into_iter().enumerate() {
        let shifted = shift_jets(&c, depth)?;
        if !shifted.is_zero() {
            out.add_term(0, i as u32, shifted);
        }
    }
    Ok(out)
}

fn dx_power(space: SpaceTag, n: u32) -> Result<DiffOperator, JetError> {
    let mut op = DiffOperator::identity(space);
    for _ in 0..n {
        op = op.compose(&DiffOperator::dx(space))?;
    }
    Ok(op)
}

// =========================================================================
// Hamiltonian pairs
// =========================================================================

/// A Hamiltonian operator together with a density on the spatial slice.
/// The right-hand side K = 𝒟(E(H)) is recomputed on construction and
/// never taken on trust from the caller.
#[derive(Clone, Debug)]
pub struct HamiltonianPair {
    pub operator: DiffOperator,
    pub density: Expr,
    /// E(H), the variational gradient of the density.
    pub gradient: Expr,
    /// K = 𝒟(E(H)).
    pub rhs: Expr,
}

impl HamiltonianPair {
    pub fn new(operator: &DiffOperator, density: &Expr) -> Result<Self, HamError> {
        let operator = respace(operator, SpaceTag::Sb)?;
        let gradient = euler_lagrange(density, SpaceTag::Sb)?;
        let rhs = operator.apply(&gradient)?;
        Ok(HamiltonianPair {
            operator,
            density: density.clone(),
            gradient,
            rhs,
        })
    }
}

// =========================================================================
// Potentialization
// =========================================================================

/// The evolution equation induced on the d-fold potential by a first-order
/// Hamiltonian density, together with its variational witness: for
/// u_t = E(H)|_{shift d} and odd d, the operator D_x^d applied to
/// u_t − K is the Euler image of −½u_{(d)}·u_t + H|_{shift d}, and the
/// witness carries that identity in verified form. Even depths give no
/// witness because an even power of D_x is not skew-adjoint.
#[derive(Debug)]
pub struct PotentialEquation {
    pub depth: u32,
    /// K = E(H) with every jet shifted d levels up.
    pub rhs: Expr,
    pub context: EqContext,
    pub witness: Option<VariationalWitness>,
}

pub fn potentialize(h: &Expr, depth: u32) -> Result<PotentialEquation, HamError> {
    if depth == 0 {
        return Err(HamError::ZeroDepth);
    }
    let gradient = euler_lagrange(h, SpaceTag::Sb)?;
    let rhs = shift_jets(&gradient, depth)?;
    let context = EqContext::new(rhs.clone())?;
    let witness = if depth % 2 == 1 {
        let operator = dx_power(SpaceTag::Free, depth)?;
        let q = Expr::coord(JetCoord::xjet(depth)).scale(&-half());
        let l = shift_jets(h, depth)?.add(&q.mul(&rhs));
        Some(verify_variational(&operator, &context, &q, &l)?)
    } else {
        None
    };
    Ok(PotentialEquation {
        depth,
        rhs,
        context,
        witness,
    })
}

/// Residual of the change-of-variables identity for the Euler operator
/// under the depth-d potential substitution:
/// E(H|_{shift d}) − (−1)^d X^d(E(H)|_{shift d}). Returns the (zero)
/// residual; a nonzero value is an internal fault and reported as such.
pub fn euler_change_of_variables(h: &Expr, depth: u32) -> Result<Expr, HamError> {
    if depth == 0 {
        return Err(HamError::ZeroDepth);
    }
    let lhs = euler_lagrange(&shift_jets(h, depth)?, SpaceTag::Sb)?;
    let mut rhs = shift_jets(&euler_lagrange(h, SpaceTag::Sb)?, depth)?;
    for _ in 0..depth {
        rhs = total_x(&rhs)?;
    }
    if depth % 2 == 1 {
        rhs = rhs.neg();
    }
    let residual = lhs.sub(&rhs);
    if !residual.is_zero() {
        return Err(HamError::ResidualNonzero {
            name: "change of variables",
            residual: residual.to_string(),
        });
    }
    Ok(residual)
}

// =========================================================================
// Second-density compatibility
// =========================================================================

/// Certificate chain for the compatibility of a second Hamiltonian
/// operator with a first density: G := 𝒟₀(E(H1)) must be a total
/// x-derivative, G = X(F), and the primitive F must itself be a
/// variational gradient, F = E(H2). Both memberships carry exact
/// residuals; `compatible` is true only when both vanish.
#[derive(Clone, Debug)]
pub struct CompatOutcome {
    /// G = 𝒟₀(E(H1)).
    pub g: Expr,
    /// E(G); zero iff G is a total x-derivative.
    pub image_residual: Expr,
    /// F with X(F) = G (re-verified), when the image test passes.
    pub f: Option<Expr>,
    pub helmholtz: Option<HelmholtzOutcome>,
    /// H2 with E(H2) = F, when the whole chain closes.
    pub h2: Option<Expr>,
    pub compatible: bool,
    pub note: Option<String>,
}

pub fn compatibility_h2(
    d0: &DiffOperator,
    h1: &Expr,
    base: &BasePoint,
) -> Result<CompatOutcome, HamError> {
    let d0 = respace(d0, SpaceTag::Sb)?;
    let gradient = euler_lagrange(h1, SpaceTag::Sb)?;
    let g = d0.apply(&gradient)?;
    if g.is_zero() {
        return Ok(CompatOutcome {
            g,
            image_residual: Expr::zero(),
            f: Some(Expr::zero()),
            helmholtz: None,
            h2: Some(Expr::zero()),
            compatible: true,
            note: Some("operator annihilates the gradient".into()),
        });
    }
    let image_residual = euler_lagrange(&g, SpaceTag::Sb)?;
    if !image_residual.is_zero() {
        return Ok(CompatOutcome {
            g,
            image_residual,
            f: None,
            helmholtz: None,
            h2: None,
            compatible: false,
            note: Some("the operator image of the gradient is not a total x-derivative".into()),
        });
    }
    let f = horizontal_integrate(&g, None, None)?;
    let primitive_residual = total_x(&f)?.sub(&g);
    if !primitive_residual.is_zero() {
        return Err(HamError::ResidualNonzero {
            name: "primitive",
            residual: primitive_residual.to_string(),
        });
    }
    let helmholtz = helmholtz_and_lagrangian(&f, SpaceTag::Sb, base)?;
    let (h2, compatible, note) = if helmholtz.is_euler_image {
        match &helmholtz.lagrangian {
            Some(l) => (Some(l.clone()), true, None),
            None => (None, true, helmholtz.note.clone()),
        }
    } else {
        (
            None,
            false,
            Some("the primitive fails the self-adjointness test".into()),
        )
    };
    Ok(CompatOutcome {
        g,
        image_residual,
        f: Some(f),
        helmholtz: Some(helmholtz),
        h2,
        compatible,
        note,
    })
}

// =========================================================================
// Dorfman's symplectic family
// =========================================================================

/// The third-order symplectic family on the spatial slice:
/// h·(s∘D_x∘s + D_x³)∘h with s = √(c₁ + c₂·∫₀^v dy/h(y)), for a
/// pointwise coefficient h of the fiber coordinate v alone.
pub fn dorfman_operator(h: &Expr, c1: &Expr, c2: &Expr) -> Result<DiffOperator, HamError> {
    if h.coord_support().into_iter().any(|c| c != JetCoord::U0) {
        return Err(HamError::CoefficientNotPointwise);
    }
    let inv = Expr::one().div(h)?;
    let primitive = inv.antiderivative(&Var::Coord(JetCoord::U0))?;
    let at_zero = primitive.substitute_one(JetCoord::U0, &Expr::zero())?;
    let integral = primitive.sub(&at_zero);
    let inner = c1.add(&c2.mul(&integral));
    let space = SpaceTag::Sb;
    let dx = DiffOperator::dx(space);
    let mut core = dx_power(space, 3)?;
    if !inner.is_zero() {
        let s = inner.pow_rational(&half())?;
        let ms = DiffOperator::multiplication(space, s);
        core = ms.compose(&dx)?.compose(&ms)?.add(&core)?;
    }
    let mh = DiffOperator::multiplication(space, h.clone());
    Ok(mh.compose(&core)?.compose(&mh)?)
}

/// The Dorfman operator for h = (k₁v + k₂)⁻¹ and c₂ = 1, with every
/// coefficient read one jet level up (v = u_x), so that it acts on the
/// potential equation. Skewness is asserted; the symplectic verdict is
/// the caller's to run.
pub fn dorfman_pulled_back(k1: &Expr, k2: &Expr, c1: &Expr) -> Result<DiffOperator, HamError> {
    let h = Expr::one().div(&k1.mul(&Expr::coord(JetCoord::U0)).add(k2))?;
    let d = dorfman_operator(&h, c1, &Expr::one())?;
    let op = shift_operator(&d, 1, SpaceTag::Sb)?;
    let skew = op.skew_residual();
    if !skew.is_zero_op() {
        return Err(HamError::ResidualNonzero {
            name: "skewness",
            residual: skew.to_string(),
        });
    }
    Ok(op)
}

// =========================================================================
// Pair-to-witness pipeline
// =========================================================================

/// Everything the pipeline certifies on the way from a bi-Hamiltonian
/// pair to a variational witness for the potential equation. The witness
/// is only ever built through `verify_variational`, so a returned outcome
/// always carries exact zero residuals.
#[derive(Debug)]
pub struct PipelineOutcome {
    pub compat: CompatOutcome,
    /// K = E(H1) shifted to the potential layer.
    pub rhs: Expr,
    pub context: EqContext,
    /// 𝓔 = 𝒟₀ with coefficients shifted to the potential layer.
    pub operator: DiffOperator,
    pub symplectic: SymplecticAnalysis,
    pub q: Expr,
    pub l: Expr,
    pub witness: VariationalWitness,
}

/// From a pair (𝒟₀, H1) on the fiber layer, build and certify a
/// variational operator for the depth-d potential equation
/// u_t = E(H1)|_{shift}: the compatibility chain supplies a second
/// density H2, the shifted 𝒟₀ must pass the symplectic test, its
/// potential furnishes Q, and L = H2|_{shift} + Q·K closes the density
/// identity.
pub fn bi_hamiltonian_pipeline(
    d0: &DiffOperator,
    h1: &Expr,
    depth: u32,
    base: &BasePoint,
) -> Result<PipelineOutcome, HamError> {
    if depth == 0 {
        return Err(HamError::ZeroDepth);
    }
    let compat = compatibility_h2(d0, h1, base)?;
    let h2 = match (&compat.compatible, &compat.h2) {
        (true, Some(h2)) => h2.clone(),
        _ => {
            let why = compat
                .note
                .clone()
                .unwrap_or_else(|| "no explicit second density from the homotopy".into());
            return Err(HamError::NotCompatible(why));
        }
    };
    let gradient = euler_lagrange(h1, SpaceTag::Sb)?;
    let rhs = shift_jets(&gradient, depth)?;
    let context = EqContext::new(rhs.clone())?;
    let shifted = shift_operator(d0, depth, SpaceTag::Sb)?;
    let symplectic = is_symplectic(&shifted, base)?;
    if !symplectic.is_symplectic {
        return Err(HamError::NotSymplectic(
            symplectic.reason.clone().unwrap_or_default(),
        ));
    }
    let q = construct_q(&shifted, None, base)?;
    let l = shift_jets(&h2, depth)?.add(&q.mul(&rhs));
    let operator = respace(&shifted, SpaceTag::Free)?;
    let witness = verify_variational(&operator, &context, &q, &l)?;
    Ok(PipelineOutcome {
        compat,
        rhs,
        context,
        operator,
        symplectic,
        q,
        l,
        witness,
    })
}

// =========================================================================
// Cylindrical KdV experiment
// =========================================================================

/// Raw certificates for the cylindrical KdV ladder
/// u_t = u_xxx + u·u_x/√t, with an explicit sign s on the kinetic term of
/// the first-rung density H1(s) = s·½u_x² + u³/(6√t). No verdict is
/// attached: the residuals are reported exactly as computed, and the sign
/// that closes each rung is left for the reader of the report.
#[derive(Debug)]
pub struct CylindricalReport {
    pub sign: i64,
    /// u_xxx + u·u_x/√t.
    pub rhs: Expr,
    pub h1: Expr,
    /// K − X(E(H1(s))).
    pub rung1_residual: Expr,
    /// K − 𝒟₀(E(H0)) for 𝒟₀ = D_x³ + (2u/(3√t))·D_x + u_x/(3√t),
    /// H0 = ½u².
    pub rung0_residual: Expr,
    /// Compatibility chain of (𝒟₀, H1(s)), raw.
    pub compat: CompatOutcome,
}

pub fn cylindrical_kdv_experiment(sign: i64, base: &BasePoint) -> Result<CylindricalReport, HamError> {
    let decls = crate::expr::parse::Declarations::new();
    let parse = |src: &str| crate::expr::parse::parse_expr(src, &decls);
    let rhs = parse("u_xxx + u*u_x*t^(-1/2)")?;
    let kinetic = parse("(1/2)*u_x^2")?.scale(&BigRational::from_integer(sign.into()));
    let h1 = kinetic.add(&parse("(1/6)*u^3*t^(-1/2)")?);
    let rung1 = rhs.sub(&total_x(&euler_lagrange(&h1, SpaceTag::Sb)?)?);
    let d0 = DiffOperator::parse(
        "Dx^3 + (2/3)*u*t^(-1/2)*Dx + (1/3)*u_x*t^(-1/2)",
        &decls,
        SpaceTag::Sb,
    )?;
    let h0 = parse("(1/2)*u^2")?;
    let rung0 = rhs.sub(&d0.apply(&euler_lagrange(&h0, SpaceTag::Sb)?)?);
    let compat = compatibility_h2(&d0, &h1, base)?;
    Ok(CylindricalReport {
        sign,
        rhs,
        h1,
        rung1_residual: rung1,
        rung0_residual: rung0,
        compat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse::{parse_expr, parse_program, Declarations};

    fn e(src: &str) -> Expr {
        parse_expr(src, &Declarations::new()).unwrap()
    }

    fn op(src: &str) -> DiffOperator {
        DiffOperator::parse(src, &Declarations::new(), SpaceTag::Sb).unwrap()
    }

    /// Base point with u = u_x = 1 and every other jet at the origin;
    /// keeps homotopies clear of the coordinate hyperplanes that the
    /// rational coefficients in these fixtures are singular on.
    fn base_unit() -> BasePoint {
        BasePoint::origin()
            .with(JetCoord::U0, 1)
            .with(JetCoord::xjet(1), 1)
    }

    #[test]
    fn shift_reads_density_on_deeper_jet_layer() {
        let d2 = shift_jets(&e("u*u_x + u_xx"), 2).unwrap();
        assert_eq!(d2, e("u_xx*u_xxx + u_xxxx"));
        let passive = shift_jets(&e("t*x*u"), 1).unwrap();
        assert_eq!(passive, e("t*x*u_x"));
        assert!(matches!(
            shift_jets(&e("u_t + u_x"), 1),
            Err(HamError::TJetPresent)
        ));
    }

    #[test]
    fn pair_recomputes_rhs_from_density() {
        let pair = HamiltonianPair::new(&op("Dx"), &e("-(1/2)*u_x^2/u^3")).unwrap();
        assert_eq!(pair.gradient, e("u_xx/u^3 - (3/2)*u_x^2/u^4"));
        assert_eq!(
            pair.rhs,
            e("u_xxx/u^3 - 6*u_x*u_xx/u^4 + 6*u_x^3/u^5")
        );
    }

    #[test]
    fn pair_chain_agrees_on_both_rungs() {
        let rung1 = HamiltonianPair::new(&op("Dx"), &e("-(1/2)*u_x^2/u^3")).unwrap();
        let rung0 =
            HamiltonianPair::new(&op("(1/u) @ Dx^3 @ (1/u)"), &e("-u")).unwrap();
        assert_eq!(rung1.rhs, rung0.rhs);
    }

    #[test]
    fn conjugated_pairs_reproduce_cubed_equation() {
        let first =
            HamiltonianPair::new(&op("u^2 @ Dx @ u^2"), &e("-(1/2)*u_x^2/u")).unwrap();
        let zeroth =
            HamiltonianPair::new(&op("u^3 @ Dx^3 @ u^3"), &e("-1/u")).unwrap();
        assert_eq!(first.gradient, e("u_xx/u - (1/2)*u_x^2/u^2"));
        assert_eq!(first.rhs, e("u^3*u_xxx"));
        assert_eq!(zeroth.rhs, e("u^3*u_xxx"));
    }

    #[test]
    fn potentialize_first_order_reciprocal_density() {
        let out = potentialize(&e("-(1/2)*u_x^2/u^3"), 1).unwrap();
        assert_eq!(out.rhs, e("u_xxx/u_x^3 - (3/2)*u_xx^2/u_x^4"));
        let w = out.witness.unwrap();
        assert_eq!(w.q, e("-(1/2)*u_x"));
        // The certified density collapses to −½u_x·u_t + H|shift.
        let delta = Expr::coord(JetCoord::U { a: 1, i: 0 }).sub(&out.rhs);
        let density = w.q.mul(&delta).add(&w.l);
        assert_eq!(density, e("-(1/2)*u_x*u_t - (1/2)*u_xx^2/u_x^3"));
    }

    #[test]
    fn potentialize_transport_density() {
        let out = potentialize(&e("(1/2)*u^2"), 1).unwrap();
        assert_eq!(out.rhs, e("u_x"));
        let w = out.witness.unwrap();
        assert_eq!(w.l, e("(1/2)*u_x^2 - (1/2)*u_x*u_x"));
        assert!(w.operator_residual.is_zero_op());
    }

    #[test]
    fn potentialize_depth_three_radical_density() {
        let out = potentialize(&e("2*u^(1/2)"), 3).unwrap();
        assert_eq!(out.rhs, e("u_xxx^(-1/2)"));
        let w = out.witness.unwrap();
        assert_eq!(w.q, e("-(1/2)*u_xxx"));
        let delta = Expr::coord(JetCoord::U { a: 1, i: 0 }).sub(&out.rhs);
        let density = w.q.mul(&delta).add(&w.l);
        assert_eq!(density, e("-(1/2)*u_xxx*u_t + 2*u_xxx^(1/2)"));
    }

    #[test]
    fn potentialize_even_depth_has_no_witness() {
        let out = potentialize(&e("2*u^(1/2)"), 2).unwrap();
        assert_eq!(out.rhs, e("u_xx^(-1/2)"));
        assert!(out.witness.is_none());
        assert!(matches!(
            potentialize(&e("u"), 0),
            Err(HamError::ZeroDepth)
        ));
    }

    #[test]
    fn euler_operator_commutes_with_potential_substitution() {
        for (h, d) in [
            ("-(1/2)*u_x^2/u^3", 1),
            ("2*u^(1/2)", 3),
            ("u*u_x^2 + u^4 - 3*u*u_xx", 2),
            ("5", 2),
        ] {
            let residual = euler_change_of_variables(&e(h), d).unwrap();
            assert!(residual.is_zero(), "h = {h}, depth {d}");
        }
    }

    #[test]
    fn potential_flow_commutes_with_x_derivative() {
        let h = e("-(1/2)*u_x^2/u^3");
        let out = potentialize(&h, 1).unwrap();
        let lhs = total_x(&out.rhs).unwrap();
        let rhs = shift_jets(
            &total_x(&euler_lagrange(&h, SpaceTag::Sb).unwrap()).unwrap(),
            1,
        )
        .unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn compatibility_chain_closes_for_reciprocal_pair() {
        let out = compatibility_h2(
            &op("(1/u) @ Dx^3 @ (1/u)"),
            &e("-(1/2)*u_x^2/u^3"),
            &base_unit(),
        )
        .unwrap();
        assert!(out.compatible);
        assert!(out.image_residual.is_zero());
        let h2 = out.h2.unwrap();
        let display = e("(1/2)*u_xx^2/u^5 - (15/8)*u_x^4/u^7");
        let gap = euler_lagrange(&h2.sub(&display), SpaceTag::Sb).unwrap();
        assert!(gap.is_zero(), "second density differs by {}", h2.sub(&display));
    }

    #[test]
    fn compatibility_detects_annihilated_gradient() {
        let out = compatibility_h2(&op("2*u*Dx + u_x"), &e("2*u^(1/2)"), &base_unit()).unwrap();
        assert!(out.g.is_zero());
        assert!(out.compatible);
        assert_eq!(out.h2.unwrap(), Expr::zero());
    }

    #[test]
    fn compatibility_with_plain_derivative_returns_first_density() {
        let h1 = e("(1/2)*u_x^2 + (1/6)*u^3");
        let out = compatibility_h2(&op("Dx"), &h1, &BasePoint::origin()).unwrap();
        assert!(out.compatible);
        let gap = euler_lagrange(&out.h2.unwrap().sub(&h1), SpaceTag::Sb).unwrap();
        assert!(gap.is_zero());
    }

    #[test]
    fn compatibility_flags_non_integrable_image() {
        let out = compatibility_h2(&op("u"), &e("(1/2)*u_x^2"), &BasePoint::origin()).unwrap();
        assert!(!out.compatible);
        assert_eq!(out.image_residual, e("-2*u_xx"));
        assert!(out.f.is_none() && out.h2.is_none());
    }

    #[test]
    fn dorfman_reduces_to_triple_derivative() {
        let d = dorfman_operator(&Expr::one(), &Expr::zero(), &Expr::zero()).unwrap();
        assert!(d.sub(&op("Dx^3")).unwrap().is_zero_op());
    }

    #[test]
    fn dorfman_matches_displayed_family() {
        let (decls, _) = parse_program("param k1; param k2; param c1; 0").unwrap();
        let p = |src: &str| parse_expr(src, &decls).unwrap();
        let h = p("(k1*u + k2)^(-1)");
        let family = dorfman_operator(&h, &p("c1"), &Expr::one()).unwrap();
        let pulled = shift_operator(&family, 1, SpaceTag::Sb).unwrap();

        let s = p("(c1 + (1/2)*k1*u_x^2 + k2*u_x)^(1/2)");
        let m = |c: Expr| DiffOperator::multiplication(SpaceTag::Sb, c);
        let dx = DiffOperator::dx(SpaceTag::Sb);
        let core = m(s.clone())
            .compose(&dx)
            .unwrap()
            .compose(&m(s))
            .unwrap()
            .add(&dx_power(SpaceTag::Sb, 3).unwrap())
            .unwrap();
        let hu = m(p("(k1*u_x + k2)^(-1)"));
        let direct = hu.compose(&core).unwrap().compose(&hu).unwrap();
        assert!(pulled.sub(&direct).unwrap().is_zero_op());
    }

    #[test]
    fn pulled_back_dorfman_is_symplectic() {
        let one = Expr::one();
        let opd = dorfman_pulled_back(&one, &one, &one).unwrap();
        let verdict = is_symplectic(&opd, &base_unit()).unwrap();
        assert!(verdict.is_symplectic, "{:?}", verdict.reason);
    }

    #[test]
    fn dorfman_rejects_jet_dependent_coefficient() {
        assert!(matches!(
            dorfman_operator(&e("u_x"), &Expr::one(), &Expr::one()),
            Err(HamError::CoefficientNotPointwise)
        ));
    }

    #[test]
    fn pipeline_certifies_reciprocal_cubic_witness() {
        let out = bi_hamiltonian_pipeline(
            &op("(1/u) @ Dx^3 @ (1/u)"),
            &e("-(1/2)*u_x^2/u^3"),
            1,
            &base_unit(),
        )
        .unwrap();
        assert_eq!(out.rhs, e("u_xxx/u_x^3 - (3/2)*u_xx^2/u_x^4"));
        assert!(out.witness.operator_residual.is_zero_op());
        assert!(out.witness.density_residual.is_zero());

        // The displayed form of the same identity, asserted directly:
        // 𝓔(u_t − K) = E((u_xx² − u_x·u_xxx)/(2u_x³)·u_t + ½u_xxx²/u_x⁵ − (15/8)u_xx⁴/u_x⁷).
        let free = respace(&out.operator, SpaceTag::Free).unwrap();
        let delta = Expr::coord(JetCoord::U { a: 1, i: 0 }).sub(&out.rhs);
        let lhs = free.apply(&delta).unwrap();
        let density = parse_expr(
            "((u_xx^2 - u_x*u_xxx)/(2*u_x^3))*u_t + (1/2)*u_xxx^2/u_x^5 - (15/8)*u_xx^4/u_x^7",
            &Declarations::new(),
        )
        .unwrap();
        let rhs = euler_lagrange(&density, SpaceTag::Free).unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn pipeline_depth_three_matches_displayed_witness() {
        let out = bi_hamiltonian_pipeline(&op("2*u*Dx + u_x"), &e("2*u^(1/2)"), 3, &base_unit())
            .unwrap();
        assert_eq!(out.rhs, e("u_xxx^(-1/2)"));
        assert_eq!(out.compat.h2.as_ref().unwrap(), &Expr::zero());
        assert!(out
            .operator
            .sub(&DiffOperator::parse(
                "2*u_xxx*Dx + u_xxxx",
                &Declarations::new(),
                SpaceTag::Free
            )
            .unwrap())
            .unwrap()
            .is_zero_op());

        // Displayed form: 𝓔(u_t − u_xxx^(-1/2)) = E(½u_xx²·u_t).
        let delta = Expr::coord(JetCoord::U { a: 1, i: 0 }).sub(&out.rhs);
        let lhs = out.operator.apply(&delta).unwrap();
        let rhs = euler_lagrange(&e("(1/2)*u_xx^2*u_t"), SpaceTag::Free).unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn pipeline_reduces_to_first_order_witness_for_plain_derivative() {
        let out = bi_hamiltonian_pipeline(
            &op("Dx"),
            &e("-(1/2)*u_x^2 + (1/6)*u^3"),
            1,
            &BasePoint::origin(),
        )
        .unwrap();
        assert_eq!(out.rhs, e("u_xxx + (1/2)*u_x^2"));
        assert_eq!(out.q, e("-(1/2)*u_x"));
    }

    #[test]
    fn pipeline_rejects_non_symplectic_operator() {
        let err = bi_hamiltonian_pipeline(&op("u*Dx"), &e("(1/2)*u^2"), 1, &BasePoint::origin())
            .unwrap_err();
        assert!(matches!(err, HamError::NotSymplectic(_)));
    }

    #[test]
    fn cylindrical_rungs_close_only_with_flipped_kinetic_sign() {
        let flipped = cylindrical_kdv_experiment(-1, &BasePoint::origin()).unwrap();
        assert!(flipped.rung0_residual.is_zero());
        assert!(flipped.rung1_residual.is_zero());

        let plain = cylindrical_kdv_experiment(1, &BasePoint::origin()).unwrap();
        assert!(plain.rung0_residual.is_zero());
        assert_eq!(plain.rung1_residual, e("2*u_xxx"));
    }
}
