//! Partial derivatives and substitution on canonical expressions.

use super::coords::{JetCoord, Var};
use super::{Base, Expr, ExprError, Term};
use num::rational::BigRational;
use num::{One, Zero};
use std::collections::BTreeMap;

impl Expr {
    /// Partial derivative with respect to a jet coordinate, treating all
    /// other coordinates as independent. Opaque symbols contribute derived
    /// symbols through the chain rule on their declared arguments.
    pub fn partial(&self, v: JetCoord) -> Expr {
        self.partial_var(&Var::Coord(v))
    }

    /// Partial derivative with respect to a coordinate or named parameter.
    pub fn partial_var(&self, v: &Var) -> Expr {
        let mut out = Expr::zero();
        for t in &self.terms {
            out = out.add(&term_partial(t, v));
        }
        out
    }

    /// Simultaneous substitution of jet coordinates. All bindings apply to
    /// the original expression at once. Substituting for an argument of an
    /// opaque symbol is rejected unless the binding is the identity.
    pub fn substitute(&self, binds: &BTreeMap<JetCoord, Expr>) -> Result<Expr, ExprError> {
        // Drop identity bindings up front.
        let live: BTreeMap<&JetCoord, &Expr> = binds
            .iter()
            .filter(|(c, e)| **e != Expr::coord(**c))
            .collect();
        if live.is_empty() {
            return Ok(self.clone());
        }
        let mut out = Expr::zero();
        for t in &self.terms {
            let mut acc = Expr::from_rational(t.coeff.clone());
            for (base, e) in &t.powers {
                let factor = match base {
                    Base::Coord(c) => match live.get(c) {
                        Some(rep) => rep.pow_rational(e)?,
                        None => power_expr(base, e),
                    },
                    Base::Opaque(r) => {
                        if let Some(c) = r.sym.args.iter().find(|c| live.contains_key(c)) {
                            return Err(ExprError::OpaqueArgSubstitution(format!(
                                "{} (argument {})",
                                r.sym.name, c
                            )));
                        }
                        power_expr(base, e)
                    }
                    Base::Log(g) => {
                        let gs = g.substitute(binds)?;
                        gs.log()?.pow_rational(e)?
                    }
                    Base::Poly(p) => {
                        let ps = p.substitute(binds)?;
                        ps.pow_rational(e)?
                    }
                    Base::Param(_) | Base::Rad(_) => power_expr(base, e),
                };
                acc = acc.mul(&factor);
            }
            out = out.add(&acc);
        }
        Ok(out)
    }

    /// Substitute a single coordinate.
    pub fn substitute_one(&self, c: JetCoord, rep: &Expr) -> Result<Expr, ExprError> {
        let mut m = BTreeMap::new();
        m.insert(c, rep.clone());
        self.substitute(&m)
    }

    /// Substitute a named parameter by an expression (used for the internal
    /// homotopy scaling variable).
    pub fn substitute_param(&self, name: &str, rep: &Expr) -> Result<Expr, ExprError> {
        let mut out = Expr::zero();
        for t in &self.terms {
            let mut acc = Expr::from_rational(t.coeff.clone());
            for (base, e) in &t.powers {
                let factor = match base {
                    Base::Param(p) if p == name => rep.pow_rational(e)?,
                    Base::Log(g) => g.substitute_param(name, rep)?.log()?.pow_rational(e)?,
                    Base::Poly(p) => p.substitute_param(name, rep)?.pow_rational(e)?,
                    _ => power_expr(base, e),
                };
                acc = acc.mul(&factor);
            }
            out = out.add(&acc);
        }
        Ok(out)
    }

    /// True if the expression depends on `v` (directly or through opaque
    /// arguments / nested bases).
    pub fn depends_on(&self, v: &Var) -> bool {
        match v {
            Var::Coord(c) => self.coord_support().contains(c),
            Var::Param(name) => self.depends_on_param(name),
        }
    }

    fn depends_on_param(&self, name: &str) -> bool {
        self.terms.iter().any(|t| {
            t.powers.iter().any(|(b, _)| match b {
                Base::Param(p) => p == name,
                Base::Log(g) => g.depends_on_param(name),
                Base::Poly(p) => p.depends_on_param(name),
                _ => false,
            })
        })
    }
}

fn power_expr(base: &Base, e: &BigRational) -> Expr {
    Expr {
        terms: vec![Term {
            coeff: BigRational::one(),
            powers: vec![(base.clone(), e.clone())],
        }],
    }
}

fn term_partial(t: &Term, v: &Var) -> Expr {
    let mut out = Expr::zero();
    for (k, (base, e)) in t.powers.iter().enumerate() {
        let dbase: Expr = match (base, v) {
            (Base::Coord(c), Var::Coord(w)) if c == w => Expr::one(),
            (Base::Param(p), Var::Param(w)) if p == w => Expr::one(),
            (Base::Opaque(r), Var::Coord(w)) => {
                let mut d = Expr::zero();
                for (idx, arg) in r.sym.args.iter().enumerate() {
                    if arg == w {
                        d = d.add(&Expr::opaque(r.derive_arg(idx)));
                    }
                }
                d
            }
            (Base::Log(g), _) => {
                let dg = g.partial_var(v);
                if dg.is_zero() {
                    Expr::zero()
                } else {
                    // d log(g) = g'/g
                    dg.div(g).expect("log argument is nonzero by construction")
                }
            }
            (Base::Poly(p), _) => p.partial_var(v),
            _ => Expr::zero(),
        };
        if dbase.is_zero() {
            continue;
        }
        // d(base^e) = e * base^(e-1) * dbase; remaining factors unchanged.
        let mut rest = Expr::from_rational(&t.coeff * e);
        for (j, (b2, e2)) in t.powers.iter().enumerate() {
            if j == k {
                let em1 = e - BigRational::one();
                if !em1.is_zero() {
                    rest = rest.mul(&power_expr(b2, &em1));
                }
            } else {
                rest = rest.mul(&power_expr(b2, e2));
            }
        }
        out = out.add(&rest.mul(&dbase));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;
    use crate::expr::coords::{OpaqueRef, OpaqueSym};

    fn u(i: u32) -> Expr {
        Expr::coord(JetCoord::xjet(i))
    }

    #[test]
    fn power_rule() {
        // d/du_x (u_x^3) = 3 u_x^2
        let e = u(1).pow_int(3).unwrap();
        let d = e.partial(JetCoord::xjet(1));
        assert_eq!(d, u(1).mul(&u(1)).scale_int(3));
    }

    #[test]
    fn quotient_and_radical_rule() {
        // d/du_xxx (u_xxx^(-1/2)) = -1/2 u_xxx^(-3/2)
        let e = Expr::one().div(&u(3).sqrt().unwrap()).unwrap();
        let d = e.partial(JetCoord::xjet(3));
        let expect = u(3)
            .pow_rational(&BigRational::new((-3).into(), 2.into()))
            .unwrap()
            .scale(&BigRational::new((-1).into(), 2.into()));
        assert!(d.sub(&expect).is_zero());
    }

    #[test]
    fn chain_rule_through_poly_base() {
        // d/du_x sqrt(u_x + 1) = 1/2 (u_x+1)^(-1/2)
        let s = u(1).add(&Expr::one());
        let e = s.sqrt().unwrap();
        let d = e.partial(JetCoord::xjet(1));
        let expect = s
            .pow_rational(&BigRational::new((-1).into(), 2.into()))
            .unwrap()
            .scale(&BigRational::new(1.into(), 2.into()));
        assert!(d.sub(&expect).is_zero());
    }

    #[test]
    fn log_derivative() {
        let l = u(1).log().unwrap();
        let d = l.partial(JetCoord::xjet(1));
        assert!(d.sub(&Expr::one().div(&u(1)).unwrap()).is_zero());
    }

    #[test]
    fn opaque_chain_rule() {
        let sym = Arc::new(OpaqueSym {
            name: "R".into(),
            args: vec![JetCoord::T, JetCoord::xjet(1)],
        });
        let r = Expr::opaque(OpaqueRef::undifferentiated(sym.clone()));
        let d = r.partial(JetCoord::xjet(1));
        let expect = Expr::opaque(OpaqueRef {
            sym,
            deriv: vec![0, 1],
        });
        assert_eq!(d, expect);
        // derivative wrt a coordinate not in the args is zero
        assert!(r.partial(JetCoord::X).is_zero());
    }

    #[test]
    fn substitution_simultaneous() {
        // swap u and u_x in u * u_x^2: -> u_x * u^2
        let e = u(0).mul(&u(1)).mul(&u(1));
        let mut binds = BTreeMap::new();
        binds.insert(JetCoord::xjet(0), u(1));
        binds.insert(JetCoord::xjet(1), u(0));
        let s = e.substitute(&binds).unwrap();
        assert_eq!(s, u(1).mul(&u(0)).mul(&u(0)));
    }

    #[test]
    fn substitution_into_denominator() {
        // (u_x+1)^(-1) with u_x -> u_xx - 1 gives u_xx^(-1)
        let e = Expr::one().div(&u(1).add(&Expr::one())).unwrap();
        let s = e
            .substitute_one(JetCoord::xjet(1), &u(2).sub(&Expr::one()))
            .unwrap();
        assert!(s.sub(&Expr::one().div(&u(2)).unwrap()).is_zero());
    }

    #[test]
    fn substitute_zero_into_inverse_is_an_error() {
        let e = Expr::one().div(&u(1)).unwrap();
        let r = e.substitute_one(JetCoord::xjet(1), &Expr::zero());
        assert!(r.is_err());
    }
}
