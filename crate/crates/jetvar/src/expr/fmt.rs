//! Round-trip-stable plain-text formatting of expressions.
//!
//! The formatter emits exactly the grammar the parser accepts: `*` between
//! factors, `^` for powers (non-trivial exponents parenthesized), `p/q`
//! rationals, `log(...)`, `diff(F, v, ...)` for derived opaque symbols, and
//! parenthesized sums for polynomial bases.

use super::{Base, Expr, Term};
use num::rational::BigRational;
use num::{One, Signed};
use std::fmt;

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms().is_empty() {
            return write!(f, "0");
        }
        for (k, t) in self.terms().iter().enumerate() {
            let neg = t.coeff.is_negative();
            if k == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else if neg {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            write_term_abs(f, t)?;
        }
        Ok(())
    }
}

fn write_term_abs(f: &mut fmt::Formatter<'_>, t: &Term) -> fmt::Result {
    let c = t.coeff.abs();
    let mut wrote = false;
    if !c.is_one() || t.powers.is_empty() {
        write_rational(f, &c)?;
        wrote = true;
    }
    for (base, e) in &t.powers {
        if wrote {
            write!(f, "*")?;
        }
        write_base(f, base)?;
        if !e.is_one() {
            if e.is_integer() && e.is_positive() {
                write!(f, "^{}", e.numer())?;
            } else {
                write!(f, "^(")?;
                write_rational(f, e)?;
                write!(f, ")")?;
            }
        }
        wrote = true;
    }
    Ok(())
}

fn write_rational(f: &mut fmt::Formatter<'_>, q: &BigRational) -> fmt::Result {
    if q.is_integer() {
        write!(f, "{}", q.numer())
    } else {
        write!(f, "{}/{}", q.numer(), q.denom())
    }
}

fn write_base(f: &mut fmt::Formatter<'_>, base: &Base) -> fmt::Result {
    match base {
        Base::Coord(c) => write!(f, "{c}"),
        Base::Param(p) => write!(f, "{p}"),
        Base::Opaque(r) => write!(f, "{r}"),
        Base::Rad(n) => write!(f, "{n}"),
        Base::Log(g) => write!(f, "log({g})"),
        Base::Poly(p) => write!(f, "({p})"),
    }
}

#[cfg(test)]
mod tests {
    use super::super::{Expr, JetCoord};

    fn u(i: u32) -> Expr {
        Expr::coord(JetCoord::xjet(i))
    }

    #[test]
    fn display_sum_with_signs() {
        let e = u(3).add(&u(0).mul(&u(1))).sub(&Expr::rational(1, 2));
        let s = e.to_string();
        assert!(s.contains("u_xxx"), "{s}");
        assert!(s.contains("u*u_x") || s.contains("u_x*u"), "{s}");
        assert!(s.contains("- 1/2"), "{s}");
    }

    #[test]
    fn display_fractional_power() {
        let e = Expr::one().div(&u(3).sqrt().unwrap()).unwrap();
        assert_eq!(e.to_string(), "u_xxx^(-1/2)");
    }

    #[test]
    fn display_poly_base() {
        let e = Expr::one().div(&u(1).add(&Expr::one())).unwrap();
        assert_eq!(e.to_string(), "(u_x + 1)^(-1)");
    }
}
