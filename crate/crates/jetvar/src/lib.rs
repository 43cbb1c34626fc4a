//! Exact variational calculus on jet spaces of scalar evolution equations
//! `u_t = K(t, x, u, u_x, …)`.
//!
//! The crate is organized bottom-up:
//! - [`expr`]: canonical symbolic expressions (exact rational arithmetic,
//!   radicals, composite denominators, formal logarithms);
//! - [`jet`]: jet spaces, total derivatives, prolonged substitution,
//!   differential operators, adjoints, linearizations;
//! - [`forms`]: the variational bicomplex (horizontal/vertical differentials,
//!   Euler operator, interior Euler projection, homotopy inverses);
//! - [`cohomology`]: canonical representatives of variational 2-form classes
//!   and the descent invariant connecting them to Lagrangians;
//! - [`oplab`]: variational-operator certificates (skewness, closure, the
//!   first-order test, symplectic/Hamiltonian verdicts);
//! - [`hamtools`]: potentialization, Euler change of variables, operator
//!   compatibility, and factored third-order symplectic operators;
//! - [`report`], [`corpus`], [`cli`]: machine-readable certificates, the
//!   bundled worked-example corpus, and the command-line interface.
//!
//! Every verdict the engine emits is backed by an exact symbolic residual:
//! verdict `true` means a certificate expression normalized to zero, never
//! that a numeric check came close.

pub mod cli;
pub mod cohomology;
pub mod corpus;
pub mod hamtools;
pub mod oplab;
pub mod report;
pub mod expr;
pub mod forms;
pub mod jet;

pub use expr::{Expr, ExprError, JetCoord};
pub use jet::{DiffOperator, EqContext, JetError, SpaceTag};
