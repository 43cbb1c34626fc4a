//! Canonical representatives of the contact cohomology of an evolution
//! equation: the adjoint of a contact 1-form, the β-construction for the
//! time component of canonical representatives, canonical classes in
//! contact degree two, the snake map to Lagrangian densities, conservation
//! law characteristics/triviality, and the Helmholtz test with Lagrangian
//! reconstruction.
//!
//! Closure identities used throughout (verified in the tests):
//!   d_H(Q·dx∧θ⁰ + dt∧β(Q)) = −dt∧dx∧θ⁰·𝓛*_Δ(Q)          (scalar Q)
//!   d_H(dx∧θ⁰∧ε − dt∧β(ε)) = −dt∧dx∧θ⁰∧𝓛*_Δ(ε)          (1-form ε)
//! so closure of the canonical representative is equivalent to the adjoint
//! linearization annihilating the coefficient data.

use crate::expr::Expr;
use crate::forms::{
    d_horizontal, d_vertical, strip_x_exact, vertical_homotopy, x_derivation, BasePoint, BasisMono,
    Form, FormError,
};
use crate::jet::{frechet, DiffOperator, EqContext, JetError, SpaceTag};
use num::One;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CohomologyError {
    #[error("operator is not skew-adjoint (residual {0})")]
    NotSkew(DiffOperator),
    #[error("form is not horizontally closed (residual {0})")]
    NotClosed(Form),
    #[error("form is not vertically closed (residual {0}); apply a horizontal correction first")]
    NotVerticallyClosed(Form),
    #[error("expected a contact 1-form, found {0}")]
    NotContactOneForm(String),
    #[error("x-part must have θ⁰ in every term to read off the defining 1-form")]
    MissingThetaZero,
    #[error("operator must be free of t-derivatives")]
    TDerivativePresent,
    #[error(transparent)]
    Form(#[from] FormError),
    #[error(transparent)]
    Jet(#[from] JetError),
}

// =========================================================================
// Adjoint of a contact 1-form and the β construction
// =========================================================================

/// Adjoint of a contact 1-form: (Σ r_iθ^i)* = Σ (−X)^i(r_iθ⁰), where X acts
/// as the total-derivative form derivation. Satisfies (ρ*)* = ρ.
pub fn rho_adjoint(rho: &Form) -> Result<Form, CohomologyError> {
    if !rho.is_zero() && rho.grade() != Some((0, 1)) {
        return Err(CohomologyError::NotContactOneForm(rho.to_string()));
    }
    let space = rho.space();
    let mut out = Form::zero(space);
    for (m, r) in rho.terms() {
        let (a, i) = m.contact[0];
        if a != 0 {
            return Err(CohomologyError::NotContactOneForm(rho.to_string()));
        }
        let mut piece = Form::theta(space, 0, 0)?.scale(r);
        for _ in 0..i {
            piece = x_derivation(&piece).neg();
        }
        out = out.add(&piece)?;
    }
    Ok(out)
}

/// β(ρ) = Σ_{i=1}^n Σ_{a=1}^i (−X)^{a−1}(K_i ρ) ∧ θ^{i−a} for ρ a scalar or
/// a contact form; K_i are the jet coefficients of the right-hand side.
pub fn beta_form(rho: &Form, ctx: &EqContext) -> Result<Form, CohomologyError> {
    let space = rho.space();
    let n = ctx.order();
    let mut out = Form::zero(space);
    for i in 1..=n {
        let ki = ctx.k_coeff(i);
        if ki.is_zero() {
            continue;
        }
        let mut piece = rho.scale(&ki);
        for a in 1..=i {
            // piece = (−X)^(a−1)(K_i ρ) at this point
            out = out.add(&piece.wedge(&Form::theta(space, 0, i - a)?)?)?;
            piece = x_derivation(&piece).neg();
        }
    }
    Ok(out)
}

/// Adjoint linearization on contact forms:
/// 𝓛*_Δ(ρ) = −T(ρ) − Σ_{i=0}^n (−X)^i(K_i ρ).
pub fn linearize_adjoint_form(rho: &Form, ctx: &EqContext) -> Result<Form, CohomologyError> {
    let mut out = crate::forms::t_derivation(rho, ctx)?.neg();
    for i in 0..=ctx.order() {
        let ki = ctx.k_coeff(i);
        if ki.is_zero() {
            continue;
        }
        let mut piece = rho.scale(&ki);
        for _ in 0..i {
            piece = x_derivation(&piece).neg();
        }
        out = out.sub(&piece)?;
    }
    Ok(out)
}

// =========================================================================
// Canonical classes in contact degree two
// =========================================================================

/// Canonical representative ω = dx∧θ⁰∧ε − dt∧β(ε) of a contact-degree-two
/// class, with its defining 1-form and exact-zero certificates.
#[derive(Clone, Debug)]
pub struct CanonicalClass {
    /// Defining contact 1-form ε = Σ r_iθ^i.
    pub epsilon: Form,
    /// ω = dx∧θ⁰∧ε − dt∧β(ε).
    pub omega: Form,
    /// ε* + ε (zero iff ε is skew).
    pub skew_residual: Form,
    /// d_H ω (zero iff the class is well defined / the operator variational).
    pub closure_residual: Form,
    /// θ⁰ ∧ 𝓛*_Δ(ε) (zero exactly when closure_residual is zero).
    pub cosymmetry_residual: Form,
}

impl CanonicalClass {
    pub fn is_skew(&self) -> bool {
        self.skew_residual.is_zero()
    }

    pub fn is_closed(&self) -> bool {
        self.closure_residual.is_zero()
    }
}

fn build_class(epsilon: Form, ctx: &EqContext) -> Result<CanonicalClass, CohomologyError> {
    let space = epsilon.space();
    let theta0 = Form::theta(space, 0, 0)?;
    let omega = Form::dx(space)
        .wedge(&theta0)?
        .wedge(&epsilon)?
        .sub(&Form::dt(space)?.wedge(&beta_form(&epsilon, ctx)?)?)?;
    let skew_residual = rho_adjoint(&epsilon)?.add(&epsilon)?;
    let closure_residual = d_horizontal(&omega, Some(ctx))?;
    let cosymmetry_residual = theta0.wedge(&linearize_adjoint_form(&epsilon, ctx)?)?;
    Ok(CanonicalClass {
        epsilon,
        omega,
        skew_residual,
        closure_residual,
        cosymmetry_residual,
    })
}

/// Canonical class of a skew-adjoint operator 𝓔 = Σ r_i D_x^i:
/// ε = −½ Σ r_iθ^i, ω = dx∧θ⁰∧ε − dt∧β(ε). The operator is variational
/// exactly when the closure certificate holds.
pub fn omega_from_operator(
    op: &DiffOperator,
    ctx: &EqContext,
) -> Result<CanonicalClass, CohomologyError> {
    if op.order() > op.x_order() {
        return Err(CohomologyError::TDerivativePresent);
    }
    let skew = op.skew_residual();
    if !skew.is_zero_op() {
        return Err(CohomologyError::NotSkew(skew));
    }
    let space = op.space();
    let mut epsilon = Form::zero(space);
    for (i, r) in op.x_coeffs().into_iter().enumerate() {
        epsilon = epsilon.add(&Form::theta(space, 0, i as u32)?.scale(&r))?;
    }
    build_class(epsilon.scale_rational(&num::BigRational::new((-1).into(), 2.into())), ctx)
}

/// Read off ρ with x-part = dx∧θ⁰∧ρ from a (1,2)-form whose dx-monomials
/// all contain θ⁰.
fn rho_of(omega: &Form) -> Result<Form, CohomologyError> {
    let space = omega.space();
    let mut rho = Form::zero(space);
    for (m, c) in omega.terms() {
        if !m.dx || m.dt {
            continue;
        }
        // canonical contact order is decreasing, so θ⁰ is the last factor
        match m.contact.as_slice() {
            [(0, j), (0, 0)] => {
                // dx∧θ⁰∧θ^j = −(dx∧θ^j∧θ⁰), so r_j = −c
                rho = rho.add(&Form::theta(space, 0, *j)?.scale(&c.neg()))?;
            }
            _ => return Err(CohomologyError::MissingThetaZero),
        }
    }
    Ok(rho)
}

/// Skew-symmetrize the defining 1-form of a closed (1,2)-form presented as
/// dx∧θ⁰∧ρ − dt∧(…): ε = ½(ρ − ρ*), then rebuild the canonical
/// representative. Horizontal-exact contamination shifts ρ by self-adjoint
/// pieces only, so ε is recovered unchanged.
pub fn canonical_representative(
    omega: &Form,
    ctx: &EqContext,
) -> Result<CanonicalClass, CohomologyError> {
    let closure = d_horizontal(omega, Some(ctx))?;
    if !closure.is_zero() {
        return Err(CohomologyError::NotClosed(closure));
    }
    let rho = rho_of(omega)?;
    let epsilon = rho
        .sub(&rho_adjoint(&rho)?)?
        .scale_rational(&num::BigRational::new(1.into(), 2.into()));
    build_class(epsilon, ctx)
}

// =========================================================================
// The snake map to Lagrangian densities
// =========================================================================

/// Result of the snake map: a vertical primitive η of ω and a density
/// λ = L·dt∧dx with d_V λ = d_H η exactly.
#[derive(Clone, Debug)]
pub struct LambdaInvariant {
    pub eta: Form,
    pub lambda: Form,
    /// Coefficient of dt∧dx in λ.
    pub density: Expr,
}

/// Snake map on a d_V- and d_H-closed (1,2)-form: η := vertical primitive
/// of ω, λ := vertical fiber-potential of d_H η, normalized by dropping
/// fiber-free coefficient terms and total-x-derivative parts of the
/// density (with the matching contact correction to η so that
/// d_Vλ = d_Hη stays exact).
pub fn lambda_invariant(
    omega: &Form,
    ctx: &EqContext,
    base: &BasePoint,
) -> Result<LambdaInvariant, CohomologyError> {
    let dv = d_vertical(omega);
    if !dv.is_zero() {
        return Err(CohomologyError::NotVerticallyClosed(dv));
    }
    let dh = d_horizontal(omega, Some(ctx))?;
    if !dh.is_zero() {
        return Err(CohomologyError::NotClosed(dh));
    }
    let space = omega.space();

    // Vertical primitive, with d_V-invisible terms removed.
    let eta = vertical_homotopy(omega, base)?.strip_fiber_free();
    debug_assert!(d_vertical(&eta).sub(omega).unwrap().is_zero());

    // Fiber potential of d_H η: lands in (2,0) because d_V(d_Hη) = 0.
    let dh_eta = d_horizontal(&eta, Some(ctx))?;
    let lambda_raw = vertical_homotopy(&dh_eta, base)?;
    let l_raw = lambda_raw
        .dtdx_coefficient()
        .ok_or_else(|| CohomologyError::NotContactOneForm(lambda_raw.to_string()))?
        .fiber_dependent_part();

    // Normalize the density modulo total x-derivatives; compensate η so
    // that d_H η = d_V λ is preserved:
    // d_H(dt∧d_V f) = −d_V(X(f)·dt∧dx).
    let (l_red, f) = strip_x_exact(&l_raw);
    let l_red = l_red.fiber_dependent_part();
    let eta = if f.is_zero() {
        eta
    } else {
        eta.add(&Form::dt(space)?.wedge(&d_vertical(&Form::scalar(space, f)))?)?
    };
    let lambda = Form::dt(space)?
        .wedge(&Form::dx(space))?
        .scale(&l_red);

    let residual = d_vertical(&lambda).sub(&d_horizontal(&eta, Some(ctx))?)?;
    if !residual.is_zero() {
        return Err(CohomologyError::NotClosed(residual));
    }
    Ok(LambdaInvariant {
        eta,
        lambda,
        density: l_red,
    })
}

// =========================================================================
// Conservation laws
// =========================================================================

/// Triviality analysis of a horizontal 1-form κ = A dx + B dt.
#[derive(Clone, Debug)]
pub enum ConservationVerdict {
    /// d_H κ ≠ 0.
    NotConservationLaw,
    /// Closed with nonzero characteristic.
    Nontrivial,
    /// Closed, zero characteristic, explicit primitive found.
    Trivial,
    /// Closed with zero characteristic, but the primitive left the
    /// supported closed-form fragment.
    Inconclusive(String),
}

/// How a trivial conservation law is certified: κ = d_H f, with the
/// logarithmic part of f (if any) also expressed as a multiplicative
/// factor R = exp(log-part).
#[derive(Clone, Debug)]
pub struct TrivialityWitness {
    /// Primitive with κ = d_H f (may contain formal logarithms).
    pub f: Expr,
    /// When f has a pure-logarithm part Σ c_k·log g_k with rational c_k:
    /// R = Π g_k^{c_k}.
    pub multiplicative: Option<Expr>,
}

#[derive(Clone, Debug)]
pub struct ConservationAnalysis {
    pub closure_residual: Form,
    /// Q = E(A), the characteristic.
    pub characteristic: Expr,
    pub verdict: ConservationVerdict,
    pub witness: Option<TrivialityWitness>,
}

/// Convert the logarithmic terms of a primitive into a multiplicative
/// factor: Σ c_k log(g_k) ↦ Π g_k^{c_k}, when every log term is a rational
/// multiple of a single logarithm base.
fn multiplicative_witness(f: &Expr) -> Option<Expr> {
    use crate::expr::Base;
    let mut r = Expr::one();
    let mut seen = false;
    for t in f.terms() {
        let logs: Vec<_> = t
            .powers
            .iter()
            .filter(|(b, _)| matches!(b, Base::Log(_)))
            .collect();
        if logs.is_empty() {
            continue;
        }
        // exactly c·log(g): one log base, power one, no other factors
        if logs.len() != 1 || t.powers.len() != 1 {
            return None;
        }
        let (b, e) = logs[0];
        if !e.is_one() {
            return None;
        }
        let g = match b {
            Base::Log(g) => g.as_ref().clone(),
            _ => unreachable!(),
        };
        r = r.mul(&g.pow_rational(&t.coeff).ok()?);
        seen = true;
    }
    if seen {
        Some(r)
    } else {
        None
    }
}

/// Characteristic and triviality of a candidate conservation law
/// κ = A dx + B dt on the equation manifold.
pub fn conservation_characteristic(
    kappa: &Form,
    ctx: &EqContext,
) -> Result<ConservationAnalysis, CohomologyError> {
    let closure_residual = d_horizontal(kappa, Some(ctx))?;
    let dx_mono = BasisMono {
        dt: false,
        dx: true,
        contact: vec![],
    };
    let dt_mono = BasisMono {
        dt: true,
        dx: false,
        contact: vec![],
    };
    let a = kappa.coeff(&dx_mono);
    let b = kappa.coeff(&dt_mono);
    let characteristic = crate::forms::euler_lagrange(&a, SpaceTag::Sb)?;
    if !closure_residual.is_zero() {
        return Ok(ConservationAnalysis {
            closure_residual,
            characteristic,
            verdict: ConservationVerdict::NotConservationLaw,
            witness: None,
        });
    }
    if !characteristic.is_zero() {
        return Ok(ConservationAnalysis {
            closure_residual,
            characteristic,
            verdict: ConservationVerdict::Nontrivial,
            witness: None,
        });
    }
    match crate::forms::horizontal_integrate(&a, Some(&b), Some(ctx)) {
        Ok(f) => {
            let multiplicative = multiplicative_witness(&f);
            Ok(ConservationAnalysis {
                closure_residual,
                characteristic,
                verdict: ConservationVerdict::Trivial,
                witness: Some(TrivialityWitness { f, multiplicative }),
            })
        }
        Err(e) => Ok(ConservationAnalysis {
            closure_residual,
            characteristic,
            verdict: ConservationVerdict::Inconclusive(e.to_string()),
            witness: None,
        }),
    }
}

// =========================================================================
// Helmholtz test and Lagrangian reconstruction
// =========================================================================

#[derive(Clone, Debug)]
pub struct HelmholtzOutcome {
    /// F_Q − F_Q* (zero iff Q is an Euler image).
    pub self_adjointness_residual: DiffOperator,
    pub is_euler_image: bool,
    /// A with E(A) = Q (re-verified), when the homotopy stays in the
    /// fragment.
    pub lagrangian: Option<Expr>,
    /// Why the Lagrangian is absent despite a positive verdict.
    pub note: Option<String>,
}

/// Euler-image test via self-adjointness of the Fréchet derivative, with
/// Lagrangian reconstruction by the fiber homotopy A = ∫₀¹(u−u⁰)·Q|λ dλ
/// (computed weight-by-weight from the vertical homotopy of Q·dx∧θ⁰, or
/// Q·dt∧dx∧ϑ⁰ on the free jet space).
pub fn helmholtz_and_lagrangian(
    q: &Expr,
    space: SpaceTag,
    base: &BasePoint,
) -> Result<HelmholtzOutcome, CohomologyError> {
    let fq = frechet(q, space)?;
    let residual = fq.sub(&fq.adjoint())?;
    if !residual.is_zero_op() {
        return Ok(HelmholtzOutcome {
            self_adjointness_residual: residual,
            is_euler_image: false,
            lagrangian: None,
            note: None,
        });
    }
    // Source form Q·(top horizontal)∧θ⁰; its vertical primitive carries the
    // candidate Lagrangian, with the sign set by the position of θ⁰.
    let (src, sign) = match space {
        SpaceTag::Free => (
            Form::dt(space)?
                .wedge(&Form::dx(space))?
                .wedge(&Form::theta(space, 0, 0)?)?,
            1i64,
        ),
        _ => (Form::dx(space).wedge(&Form::theta(space, 0, 0)?)?, -1i64),
    };
    let phi = src.scale(q);
    let (lagrangian, note) = match vertical_homotopy(&phi, base) {
        Ok(h) => {
            let mut a = Expr::zero();
            for (m, c) in h.terms() {
                if m.contact.is_empty() {
                    a = a.add(c);
                }
            }
            let a = a.scale_int(sign);
            let a = strip_x_exact(&a).0.fiber_dependent_part();
            let back = crate::forms::euler_lagrange(&a, space)?;
            if back.sub(q).is_zero() {
                (Some(a), None)
            } else {
                (
                    None,
                    Some(format!(
                        "homotopy produced a density whose variation misses Q by {}",
                        back.sub(q)
                    )),
                )
            }
        }
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(HelmholtzOutcome {
        self_adjointness_residual: residual,
        is_euler_image: true,
        lagrangian,
        note,
    })
}

// =========================================================================
// Tests
// =========================================================================
