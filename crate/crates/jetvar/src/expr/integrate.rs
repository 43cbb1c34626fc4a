//! Exact one-variable integration on the supported fragment.
//!
//! Handles per-term integrands of the shapes
//!   c·vⁿ,  c·v^q (q rational, q = −1 gives a formal log),
//!   c·vⁿ·(αv+β)^q  (binomial rewrite in the linear polynomial base),
//!   c·h(v)·log(g)ᵏ  (integration by parts, log degree strictly decreases),
//! with all other factors independent of the integration variable. Anything
//! else returns an explicit `Integrate` error instead of a wrong answer.

use super::coords::Var;
use super::{Base, Expr, ExprError, Term};
use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed};

impl Expr {
    /// Antiderivative with respect to `v`; other variables are parameters.
    pub fn antiderivative(&self, v: &Var) -> Result<Expr, ExprError> {
        let mut out = Expr::zero();
        for t in self.terms() {
            out = out.add(&term_antiderivative(t, v, 0)?);
        }
        Ok(out)
    }

    /// Definite integral `∫ from lo to hi` with respect to `v`, by
    /// evaluating the antiderivative at the bounds. A pole at a bound
    /// surfaces as a substitution error.
    pub fn integrate_between(&self, v: &Var, lo: &Expr, hi: &Expr) -> Result<Expr, ExprError> {
        let f = self.antiderivative(v)?;
        let at = |bound: &Expr| -> Result<Expr, ExprError> {
            match v {
                Var::Coord(c) => f.substitute_one(*c, bound),
                Var::Param(p) => f.substitute_param(p, bound),
            }
        };
        Ok(at(hi)?.sub(&at(lo)?))
    }
}

fn var_expr(v: &Var) -> Expr {
    match v {
        Var::Coord(c) => Expr::coord(*c),
        Var::Param(p) => Expr::param(p),
    }
}

fn base_depends(base: &Base, v: &Var) -> bool {
    match (base, v) {
        (Base::Coord(c), Var::Coord(w)) => c == w,
        (Base::Param(p), Var::Param(w)) => p == w,
        (Base::Opaque(r), Var::Coord(w)) => r.sym.args.contains(w),
        (Base::Log(g), _) => g.depends_on(v),
        (Base::Poly(p), _) => p.depends_on(v),
        _ => false,
    }
}

fn term_antiderivative(t: &Term, v: &Var, depth: usize) -> Result<Expr, ExprError> {
    if depth > 8 {
        return Err(ExprError::Integrate(
            "integration-by-parts recursion exceeded its depth bound".into(),
        ));
    }
    // Split the term into v-free and v-dependent factors.
    let mut free = Expr::from_rational(t.coeff.clone());
    let mut dep: Vec<(Base, BigRational)> = Vec::new();
    for (b, e) in &t.powers {
        if base_depends(b, v) {
            dep.push((b.clone(), e.clone()));
        } else {
            free = free.mul(&single_power(b, e));
        }
    }
    let body = integrate_v_part(&dep, v, depth)?;
    Ok(free.mul(&body))
}

fn single_power(b: &Base, e: &BigRational) -> Expr {
    Expr::normalize_public(vec![Term {
        coeff: BigRational::one(),
        powers: vec![(b.clone(), e.clone())],
    }])
}

impl Expr {
    /// Crate-internal escape hatch for building from raw terms.
    pub(crate) fn normalize_public(raw: Vec<Term>) -> Expr {
        let mut acc = Expr::zero();
        for t in raw {
            let single = Expr {
                terms: super::expand_term(t.coeff, t.powers),
            };
            acc = acc.add(&single);
        }
        acc
    }
}

/// Integrate a pure product of v-dependent base powers.
fn integrate_v_part(
    dep: &[(Base, BigRational)],
    v: &Var,
    depth: usize,
) -> Result<Expr, ExprError> {
    // Peel off log factors first: they integrate by parts.
    if let Some(idx) = dep
        .iter()
        .position(|(b, _)| matches!(b, Base::Log(_)))
    {
        let (lb, le) = &dep[idx];
        let g = match lb {
            Base::Log(g) => g.clone(),
            _ => unreachable!(),
        };
        if !le.is_integer() || !le.is_positive() {
            return Err(ExprError::Integrate(format!(
                "cannot integrate log power {le}"
            )));
        }
        let n = le.numer().clone();
        let rest: Vec<(Base, BigRational)> =
            dep.iter().enumerate().filter(|(j, _)| *j != idx).map(|(_, p)| p.clone()).collect();
        // ∫ h·Lⁿ dv = H·Lⁿ − n ∫ H·L^{n−1}·g'/g dv with H = ∫h dv.
        let h_int = integrate_v_part(&rest, v, depth)?;
        let l = single_power(lb, &BigRational::one());
        let l_pow_n = l.pow_rational(&BigRational::from_integer(n.clone()))?;
        let l_pow_nm1 = l.pow_rational(&BigRational::from_integer(&n - BigInt::one()))?;
        let gp = g.partial_var(v);
        let inner = h_int
            .mul(&l_pow_nm1)
            .mul(&gp)
            .div(&g)?
            .scale(&BigRational::from_integer(n));
        let mut tail = Expr::zero();
        for it in inner.terms() {
            tail = tail.add(&term_antiderivative(it, v, depth + 1)?);
        }
        return Ok(h_int.mul(&l_pow_n).sub(&tail));
    }

    match dep.len() {
        0 => Ok(var_expr(v)),
        1 => {
            let (b, q) = &dep[0];
            match b {
                Base::Coord(_) | Base::Param(_) => power_rule(&var_expr(v), &Expr::one(), q),
                Base::Poly(p) => {
                    let (alpha, _beta) = linear_in(p, v)?;
                    power_rule(&(**p).clone(), &alpha, q)
                }
                Base::Opaque(r) => Err(ExprError::Integrate(format!(
                    "cannot integrate through opaque symbol `{}`",
                    r.sym.name
                ))),
                _ => Err(ExprError::Integrate("unsupported integrand".into())),
            }
        }
        2 => {
            // vⁿ · P^q with P linear in v: rewrite vⁿ through P.
            let (mono, poly) = match (&dep[0].0, &dep[1].0) {
                (Base::Coord(_) | Base::Param(_), Base::Poly(_)) => (&dep[0], &dep[1]),
                (Base::Poly(_), Base::Coord(_) | Base::Param(_)) => (&dep[1], &dep[0]),
                _ => {
                    return Err(ExprError::Integrate(
                        "integrand mixes two incompatible bases in the integration variable"
                            .into(),
                    ))
                }
            };
            let n = &mono.1;
            if !n.is_integer() || n.is_negative() {
                return Err(ExprError::Integrate(format!(
                    "cannot integrate v^({n}) against a linear radical"
                )));
            }
            let p = match &poly.0 {
                Base::Poly(p) => p.clone(),
                _ => unreachable!(),
            };
            let (alpha, beta) = linear_in(&p, v)?;
            // v = (P − β)/α, so vⁿ = Σ C(n,k) P^k (−β)^{n−k} α^{−n}.
            let n_u = u32::try_from(n.numer().clone())
                .map_err(|_| ExprError::Integrate("power too large".into()))?;
            let alpha_inv_n = alpha.pow_int(-(n_u as i64))?;
            let mut out = Expr::zero();
            for k in 0..=n_u {
                let c = binomial(n_u, k);
                let beta_pow = beta.neg().pow_int((n_u - k) as i64)?;
                let pk = &poly.1 + BigRational::from_integer(BigInt::from(k));
                let piece = power_rule(&(*p).clone(), &alpha, &pk)?;
                out = out.add(
                    &piece
                        .mul(&beta_pow)
                        .mul(&alpha_inv_n)
                        .scale(&BigRational::from_integer(c)),
                );
            }
            Ok(out)
        }
        _ => Err(ExprError::Integrate(
            "integrand has too many factors in the integration variable".into(),
        )),
    }
}

/// ∫ P^q · (dP = α dv): P^{q+1}/(α(q+1)), or log(P)/α at q = −1.
fn power_rule(p: &Expr, alpha: &Expr, q: &BigRational) -> Result<Expr, ExprError> {
    let minus_one = -BigRational::one();
    if *q == minus_one {
        return p.log()?.div(alpha);
    }
    let q1 = q + BigRational::one();
    p.pow_rational(&q1)?
        .div(alpha)?
        .div(&Expr::from_rational(q1))
}

/// Require `p` to be affine in `v` with v-free coefficients: returns (α, β)
/// with p = α·v + β.
fn linear_in(p: &Expr, v: &Var) -> Result<(Expr, Expr), ExprError> {
    let alpha = p.partial_var(v);
    if alpha.is_zero() || alpha.depends_on(v) {
        return Err(ExprError::Integrate(format!(
            "polynomial base `{p}` is not linear in the integration variable"
        )));
    }
    let beta = p.sub(&alpha.mul(&var_expr(v)));
    if beta.depends_on(v) {
        return Err(ExprError::Integrate(format!(
            "polynomial base `{p}` is not linear in the integration variable"
        )));
    }
    Ok((alpha, beta))
}

fn binomial(n: u32, k: u32) -> BigInt {
    let mut num = BigInt::one();
    let mut den = BigInt::one();
    for j in 0..k.min(n - k) {
        num *= BigInt::from(n - j);
        den *= BigInt::from(j + 1);
    }
    num / den
}
