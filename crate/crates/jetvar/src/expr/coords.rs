//! Coordinates on the infinite jet space of a single scalar field u(t, x),
//! plus declarations for free parameters and opaque (undetermined) functions.
//!
//! Jet coordinates are written `u_{a,i}`: `a` counts t-derivatives, `i`
//! counts x-derivatives, so `u_{0,0} = u`, `u_{0,1} = u_x`, `u_{1,0} = u_t`,
//! `u_{1,2} = u_txx`. The derived ordering `t < x < u_{a,i}` (lexicographic
//! in `(a, i)`) is the canonical coordinate order used everywhere.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// A coordinate on the jet space: the independent variables `t` and `x`, or a
/// jet coordinate `u_{a,i}` of the dependent variable.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum JetCoord {
    /// Time variable `t`.
    T,
    /// Space variable `x`.
    X,
    /// Jet coordinate `u_{a,i}`: `a` t-derivatives and `i` x-derivatives of u.
    U { a: u32, i: u32 },
}

impl JetCoord {
    /// The base fiber coordinate `u = u_{0,0}`.
    pub const U0: JetCoord = JetCoord::U { a: 0, i: 0 };

    /// Pure x-derivative coordinate `u_i = u_{0,i}`.
    pub fn xjet(i: u32) -> Self {
        JetCoord::U { a: 0, i }
    }

    /// True for fiber coordinates (any `u_{a,i}`), false for `t`, `x`.
    pub fn is_fiber(self) -> bool {
        matches!(self, JetCoord::U { .. })
    }

    /// True for `u_{0,i}` (no t-derivatives).
    pub fn is_xjet(self) -> bool {
        matches!(self, JetCoord::U { a: 0, .. })
    }

    /// One more x-derivative: `u_{a,i}` -> `u_{a,i+1}`; `x` and `t` have none.
    pub fn shift_x(self) -> Option<Self> {
        match self {
            JetCoord::U { a, i } => Some(JetCoord::U { a, i: i + 1 }),
            _ => None,
        }
    }

    /// One more t-derivative: `u_{a,i}` -> `u_{a+1,i}`.
    pub fn shift_t(self) -> Option<Self> {
        match self {
            JetCoord::U { a, i } => Some(JetCoord::U { a: a + 1, i }),
            _ => None,
        }
    }

    /// Parse a coordinate name: `t`, `x`, `u`, `u_t`, `u_xx`, `u_txx`, ….
    /// Subscript letters must come as t's first, then x's.
    pub fn parse_name(name: &str) -> Option<Self> {
        match name {
            "t" => return Some(JetCoord::T),
            "x" => return Some(JetCoord::X),
            "u" => return Some(JetCoord::U0),
            _ => {}
        }
        let tail = name.strip_prefix("u_")?;
        if tail.is_empty() {
            return None;
        }
        let mut a = 0u32;
        let mut i = 0u32;
        let mut seen_x = false;
        for c in tail.chars() {
            match c {
                't' if !seen_x => a += 1,
                'x' => {
                    seen_x = true;
                    i += 1;
                }
                _ => return None,
            }
        }
        Some(JetCoord::U { a, i })
    }
}

impl fmt::Display for JetCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            JetCoord::T => write!(f, "t"),
            JetCoord::X => write!(f, "x"),
            JetCoord::U { a: 0, i: 0 } => write!(f, "u"),
            JetCoord::U { a, i } => {
                // Compact subscript form while readable; indexed form beyond.
                if (a + i) <= 8 {
                    write!(f, "u_")?;
                    for _ in 0..a {
                        write!(f, "t")?;
                    }
                    for _ in 0..i {
                        write!(f, "x")?;
                    }
                    Ok(())
                } else {
                    write!(f, "u[{a},{i}]")
                }
            }
        }
    }
}

/// Declaration of an opaque function symbol: a name plus the jet coordinates
/// it is allowed to depend on, e.g. `func R(t, x, u, u_x);`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct OpaqueSym {
    pub name: String,
    pub args: Vec<JetCoord>,
}

/// A (possibly differentiated) occurrence of an opaque symbol.
/// `deriv[k]` is the number of partial derivatives taken with respect to
/// argument `k`; mixed partials commute, so the multi-index is canonical.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct OpaqueRef {
    pub sym: Arc<OpaqueSym>,
    pub deriv: Vec<u32>,
}

impl OpaqueRef {
    pub fn undifferentiated(sym: Arc<OpaqueSym>) -> Self {
        let n = sym.args.len();
        OpaqueRef {
            sym,
            deriv: vec![0; n],
        }
    }

    pub fn is_underived(&self) -> bool {
        self.deriv.iter().all(|&d| d == 0)
    }

    /// One more derivative with respect to argument `k`.
    pub fn derive_arg(&self, k: usize) -> Self {
        let mut d = self.deriv.clone();
        d[k] += 1;
        OpaqueRef {
            sym: self.sym.clone(),
            deriv: d,
        }
    }
}

impl fmt::Display for OpaqueRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_underived() {
            return write!(f, "{}", self.sym.name);
        }
        write!(f, "diff({}", self.sym.name)?;
        for (k, &d) in self.deriv.iter().enumerate() {
            for _ in 0..d {
                write!(f, ", {}", self.sym.args[k])?;
            }
        }
        write!(f, ")")
    }
}

/// A variable one can differentiate or integrate with respect to: either a
/// jet-space coordinate or a named scalar parameter (used internally for the
/// homotopy scaling variable).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Var {
    Coord(JetCoord),
    Param(String),
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::Coord(c) => write!(f, "{c}"),
            Var::Param(p) => write!(f, "{p}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coord_order_is_t_x_then_jets_lex() {
        let mut v = vec![
            JetCoord::U { a: 1, i: 0 },
            JetCoord::X,
            JetCoord::U { a: 0, i: 2 },
            JetCoord::T,
            JetCoord::U { a: 0, i: 0 },
        ];
        v.sort();
        assert_eq!(
            v,
            vec![
                JetCoord::T,
                JetCoord::X,
                JetCoord::U { a: 0, i: 0 },
                JetCoord::U { a: 0, i: 2 },
                JetCoord::U { a: 1, i: 0 },
            ]
        );
    }

    #[test]
    fn coord_names_round_trip() {
        for c in [
            JetCoord::T,
            JetCoord::X,
            JetCoord::U0,
            JetCoord::U { a: 0, i: 3 },
            JetCoord::U { a: 1, i: 0 },
            JetCoord::U { a: 2, i: 3 },
        ] {
            let s = c.to_string();
            assert_eq!(JetCoord::parse_name(&s), Some(c), "name {s}");
        }
        // Beyond the compact range the indexed form is used (handled by the
        // expression parser, not by bare-name lookup).
        assert_eq!(JetCoord::U { a: 4, i: 7 }.to_string(), "u[4,7]");
        assert_eq!(JetCoord::parse_name("u_xt"), None); // x before t is rejected
        assert_eq!(JetCoord::parse_name("u_"), None);
    }
}
