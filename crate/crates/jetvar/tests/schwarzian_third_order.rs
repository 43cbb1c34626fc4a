//! The third-order operator of the Schwarzian KdV equation and its
//! canonical two-form class: the displayed representative, its
//! vertically-closed correction, and the descent chain down to the
//! invariant density −u_xx⁴/(8u_x⁴)·dt∧dx.

use jetvar::cohomology::{canonical_representative, lambda_invariant, omega_from_operator};
use jetvar::expr::parse::{parse_expr, Declarations};
use jetvar::expr::Expr;
use jetvar::forms::{d_horizontal, d_vertical, parse_form, BasePoint, Form};
use jetvar::jet::{DiffOperator, EqContext, SpaceTag};
use jetvar::oplab::is_symplectic;

fn e(src: &str) -> Expr {
    parse_expr(src, &Declarations::new()).unwrap()
}

fn form(src: &str) -> Form {
    parse_form(src, &Declarations::new(), SpaceTag::Eqn).unwrap()
}

fn schwarzian() -> EqContext {
    EqContext::new(e("u_xxx - (3/2)*u_xx^2/u_x")).unwrap()
}

const OPERATOR: &str = "(1/u_x^2)*Dx^3 - 3*(u_xx/u_x^3)*Dx^2 + (3*u_xx^2/u_x^4 - u_xxx/u_x^3)*Dx";

const OMEGA_HAT: &str = "dx^th0^th1 * ((u_x*u_xxx - 3*u_xx^2)/(2*u_x^4)) \
    + dx^th0^th2 * (3*u_xx/(2*u_x^3)) \
    - dx^th0^th3 * (1/(2*u_x^2)) \
    - dt^th2^th3 * (1/(2*u_x^2)) \
    + dt^th1^th4 * (1/(2*u_x^2)) \
    - dt^th1^th3 * (u_xx/u_x^3) \
    - dt^th1^th2 * ((5*u_x*u_xxx - 6*u_xx^2)/(2*u_x^4)) \
    - dt^th0^th5 * (1/(2*u_x^2)) \
    + dt^th0^th1 * ((2*u_x^3*u_xxxxx - 18*u_x^2*u_xx*u_xxxx - 12*u_x^2*u_xxx^2 \
        + 69*u_x*u_xx^2*u_xxx - 39*u_xx^4)/(4*u_x^6)) \
    + dt^th0^th2 * ((10*u_x^2*u_xxxx - 48*u_x*u_xx*u_xxx + 39*u_xx^3)/(4*u_x^5)) \
    + dt^th0^th3 * (3*(4*u_x*u_xxx - 7*u_xx^2)/(4*u_x^4)) \
    + dt^th0^th4 * (2*u_xx/u_x^3)";

const CORRECTION: &str = "th0^th1 * (u_xx/(2*u_x^3))";

const ETA: &str = "dx^th0 * ((2*u_xx^2 - u_x*u_xxx)/(2*u_x^3)) \
    + dt^th2 * ((2*u_xx^2 - u_x*u_xxx)/(2*u_x^3)) \
    + dt^th1 * ((u_xxxx*u_x^2 - 3*u_x*u_xx*u_xxx + u_xx^3)/(2*u_x^4)) \
    - dt^th0 * ((2*u_x^3*u_xxxxx - 10*u_x^2*u_xx*u_xxxx - 6*u_x^2*u_xxx^2 \
        + 27*u_x*u_xx^2*u_xxx - 12*u_xx^4)/(4*u_x^5))";

const LAMBDA: &str = "- dt^dx * (u_xx^4/(8*u_x^4))";

fn corrected_omega(ctx: &EqContext) -> Form {
    let hat = form(OMEGA_HAT);
    let correction = d_horizontal(&form(CORRECTION), Some(ctx)).unwrap();
    hat.add(&correction).unwrap()
}

#[test]
fn operator_reproduces_displayed_class_form() {
    let ctx = schwarzian();
    let op = DiffOperator::parse(OPERATOR, &Declarations::new(), SpaceTag::Eqn).unwrap();
    let class = omega_from_operator(&op, &ctx).unwrap();
    assert!(class.is_skew());
    assert!(class.is_closed(), "{}", class.closure_residual);
    let diff = class.omega.sub(&form(OMEGA_HAT)).unwrap();
    assert!(diff.is_zero(), "{diff}");
}

#[test]
fn horizontal_correction_makes_the_form_vertically_closed() {
    let ctx = schwarzian();
    let hat = form(OMEGA_HAT);
    assert!(!d_vertical(&hat).is_zero());
    let omega = corrected_omega(&ctx);
    let dv = d_vertical(&omega);
    assert!(dv.is_zero(), "{dv}");
}

#[test]
fn corrected_form_has_the_same_canonical_class() {
    let ctx = schwarzian();
    let op = DiffOperator::parse(OPERATOR, &Declarations::new(), SpaceTag::Eqn).unwrap();
    let from_op = omega_from_operator(&op, &ctx).unwrap();
    let from_form = canonical_representative(&corrected_omega(&ctx), &ctx).unwrap();
    assert!(from_form
        .omega
        .sub(&from_op.omega)
        .unwrap()
        .is_zero());
    assert!(from_form
        .epsilon
        .sub(&from_op.epsilon)
        .unwrap()
        .is_zero());
}

#[test]
fn displayed_descent_chain_closes() {
    let ctx = schwarzian();
    let omega = corrected_omega(&ctx);
    let eta = form(ETA);
    let lambda = form(LAMBDA);

    let dv_eta = d_vertical(&eta);
    let r1 = dv_eta.sub(&omega).unwrap();
    assert!(r1.is_zero(), "{r1}");

    let dh_eta = d_horizontal(&eta, Some(&ctx)).unwrap();
    let dv_lambda = d_vertical(&lambda);
    let r2 = dh_eta.sub(&dv_lambda).unwrap();
    assert!(r2.is_zero(), "{r2}");
}

#[test]
fn snake_invariant_matches_displayed_density_up_to_vertical_closure() {
    let ctx = schwarzian();
    let omega = corrected_omega(&ctx);
    let base = BasePoint::parse("u_x = 1").unwrap();
    let inv = lambda_invariant(&omega, &ctx, &base).unwrap();

    let dv_eta = d_vertical(&inv.eta);
    assert!(dv_eta.sub(&omega).unwrap().is_zero());
    let dh_eta = d_horizontal(&inv.eta, Some(&ctx)).unwrap();
    assert!(d_vertical(&inv.lambda).sub(&dh_eta).unwrap().is_zero());

    let diff = inv.lambda.sub(&form(LAMBDA)).unwrap();
    let residual = d_vertical(&diff);
    assert!(residual.is_zero(), "{residual}");
}

#[test]
fn operator_is_symplectic() {
    let op = DiffOperator::parse(OPERATOR, &Declarations::new(), SpaceTag::Sb).unwrap();
    let out = is_symplectic(&op, &BasePoint::parse("u_x = 1").unwrap()).unwrap();
    assert!(out.is_symplectic, "{:?}", out.reason);
}
