//! Command-line front-end.
//!
//! Every subcommand parses its inputs, runs one library check, and
//! prints a [`Report`] — human-readable text by default, one JSON
//! object with `--json`.  The exit code follows the certificates:
//! 0 when every certificate is zero, 1 when some residual is
//! definitely nonzero, 2 when a zero test is inconclusive, 64 for
//! usage errors (bad flags or unparsable inputs).

use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::cohomology::{
    canonical_representative, conservation_characteristic, helmholtz_and_lagrangian,
    lambda_invariant, omega_from_operator, CanonicalClass, CohomologyError, ConservationVerdict,
};
use crate::corpus;
use crate::expr::parse::{parse_expr, parse_program, Declarations};
use crate::expr::Expr;
use crate::forms::{d_horizontal, d_vertical, euler_lagrange, parse_form, BasePoint, Form};
use crate::hamtools::{compatibility_h2, dorfman_operator, dorfman_pulled_back, potentialize};
use crate::jet::{frechet, DiffOperator, EqContext, SpaceTag};
use crate::oplab::{
    construct_q, fot_test, hamiltonian_of, is_symplectic, respace, verify_variational, FotVerdict,
    OplabError,
};
use crate::report::{Certificate, Report};

#[derive(Parser)]
#[command(
    name = "jetvar",
    version,
    about = "Exact symbolic checks for variational and symplectic structure of scalar evolution equations u_t = K(t, x, u, u_x, ...)",
    disable_help_subcommand = true
)]
struct Cli {
    /// Print the report as one JSON object instead of text
    #[arg(long, global = true)]
    json: bool,

    /// Declarations for parameters and opaque functions, e.g.
    /// "param c1; param c2;"
    #[arg(long, global = true, value_name = "SRC")]
    declare: Option<String>,

    /// Base point for fiber homotopies, e.g. "u = 1, u_x = 1"
    /// (default: every coordinate 0)
    #[arg(long = "base-point", global = true, value_name = "ASSIGNMENTS", allow_hyphen_values = true)]
    base_point: Option<String>,

    /// Jet-order bound for constructed witnesses
    #[arg(long = "order-bound", global = true, value_name = "N")]
    order_bound: Option<u32>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Verify E(u_t − K) = variation of Q·(u_t − K) + L; with --Q
    /// omitted the characteristic is constructed from E
    #[command(name = "check-variational")]
    CheckVariational {
        /// Operator, e.g. "t*Dx" or "(1/u_x) @ Dx @ (1/u_x)"
        #[arg(long = "E", value_name = "OP", allow_hyphen_values = true)]
        e: String,
        /// Right-hand side of the equation u_t = K
        #[arg(long = "K", value_name = "EXPR", allow_hyphen_values = true)]
        k: String,
        /// Witness characteristic Q
        #[arg(long = "Q", value_name = "EXPR", allow_hyphen_values = true)]
        q: Option<String>,
        /// Witness density L
        #[arg(long = "L", value_name = "EXPR", allow_hyphen_values = true)]
        l: Option<String>,
    },

    /// Decide whether a third-order equation admits a first-order
    /// variational operator 2R·D_x + X(R)
    #[command(name = "first-order")]
    FirstOrder {
        #[arg(long = "K", value_name = "EXPR", allow_hyphen_values = true)]
        k: String,
    },

    /// Test skewness and two-form closure of an operator; construct its
    /// potential when possible
    Symplectic {
        #[arg(long = "S", value_name = "OP", allow_hyphen_values = true)]
        s: String,
    },

    /// Recover the Hamiltonian density of u_t = K for a symplectic
    /// operator with potential P
    Hamiltonian {
        #[arg(long = "S", value_name = "OP", allow_hyphen_values = true)]
        s: String,
        #[arg(long = "K", value_name = "EXPR", allow_hyphen_values = true)]
        k: String,
        /// Symplectic potential, up to a rational factor
        #[arg(long = "P", value_name = "EXPR", allow_hyphen_values = true)]
        p: String,
    },

    /// Classify a horizontal 1-form as no conservation law, trivial, or
    /// nontrivial with characteristic Q
    Conservation {
        #[arg(long = "K", value_name = "EXPR", allow_hyphen_values = true)]
        k: String,
        /// Horizontal 1-form, e.g. "dx * u + dt * (u_xx + (1/2)*u^2)"
        #[arg(long, value_name = "FORM", allow_hyphen_values = true)]
        kappa: String,
    },

    /// Test whether an expression is an Euler–Lagrange image and
    /// reconstruct its density
    Helmholtz {
        #[arg(long = "Q", value_name = "EXPR", allow_hyphen_values = true)]
        q: String,
        /// Jet space for the test: "sb" (x-jets) or "free"
        #[arg(long, value_name = "SPACE", default_value = "sb")]
        space: String,
    },

    /// Canonical two-form class of a skew operator (--E) or of a given
    /// closed two-form (--omega)
    #[command(name = "canonical-rep")]
    CanonicalRep {
        #[arg(long = "E", value_name = "OP", conflicts_with = "omega", allow_hyphen_values = true)]
        e: Option<String>,
        #[arg(long, value_name = "FORM", allow_hyphen_values = true)]
        omega: Option<String>,
        #[arg(long = "K", value_name = "EXPR", allow_hyphen_values = true)]
        k: String,
    },

    /// Invariant density of the canonical class through the snake map:
    /// λ with d_Vλ = d_Hη, d_Vη = ω
    Lambda {
        #[arg(long = "E", value_name = "OP", conflicts_with = "omega", allow_hyphen_values = true)]
        e: Option<String>,
        #[arg(long, value_name = "FORM", allow_hyphen_values = true)]
        omega: Option<String>,
        #[arg(long = "K", value_name = "EXPR", allow_hyphen_values = true)]
        k: String,
    },

    /// Pass to the potential equation u_t = E(H1)|shift and certify its
    /// variational witness at odd depth
    Potentialize {
        #[arg(long = "H1", value_name = "EXPR", allow_hyphen_values = true)]
        h1: String,
        /// How many jet levels the substitution descends
        #[arg(long, value_name = "D", default_value_t = 1)]
        depth: u32,
    },

    /// Compatibility chain D0(E(H1)) = D_x E(H2): image test, flux
    /// self-adjointness, and the second density
    Compat {
        #[arg(long = "D0", value_name = "OP", allow_hyphen_values = true)]
        d0: String,
        #[arg(long = "H1", value_name = "EXPR", allow_hyphen_values = true)]
        h1: String,
    },

    /// Weighted third-order operator h∘(s∘D_x∘s + D_x³)∘h from a
    /// pointwise coefficient h(u), or its pulled-back form for
    /// h = 1/(k1·u + k2)
    Dorfman {
        /// Pointwise coefficient h(u)
        #[arg(long = "h", value_name = "EXPR", allow_hyphen_values = true)]
        h: Option<String>,
        #[arg(long, value_name = "EXPR", allow_hyphen_values = true)]
        c1: Option<String>,
        #[arg(long, value_name = "EXPR", allow_hyphen_values = true)]
        c2: Option<String>,
        #[arg(long, value_name = "EXPR", allow_hyphen_values = true)]
        k1: Option<String>,
        #[arg(long, value_name = "EXPR", allow_hyphen_values = true)]
        k2: Option<String>,
    },

    /// Run the bundled regression corpus
    Corpus {
        #[command(subcommand)]
        action: CorpusAction,
    },
}

#[derive(Subcommand)]
enum CorpusAction {
    /// Execute cases and aggregate one certificate per case
    Run {
        /// Only run cases whose name contains this substring
        #[arg(long, value_name = "SUBSTRING")]
        filter: Option<String>,
        /// Run cases concurrently (output order is unchanged)
        #[arg(long)]
        parallel: bool,
        /// Also load *.case files from this directory
        #[arg(long, value_name = "PATH")]
        dir: Option<String>,
    },
}

enum CliError {
    Usage(String),
    Engine(String),
}

impl CliError {
    fn usage<E: std::fmt::Display>(e: E) -> CliError {
        CliError::Usage(e.to_string())
    }

    fn engine<E: std::fmt::Display>(e: E) -> CliError {
        CliError::Engine(e.to_string())
    }
}

struct Session {
    decls: Declarations,
    base: BasePoint,
    order_bound: Option<u32>,
}

impl Session {
    fn new(cli: &Cli) -> Result<Session, CliError> {
        let decls = match &cli.declare {
            Some(src) => parse_program(&format!("{src} 0"))
                .map_err(CliError::usage)?
                .0,
            None => Declarations::new(),
        };
        let base = match &cli.base_point {
            Some(src) => BasePoint::parse(src).map_err(CliError::usage)?,
            None => BasePoint::origin(),
        };
        Ok(Session {
            decls,
            base,
            order_bound: cli.order_bound,
        })
    }

    fn expr(&self, src: &str) -> Result<Expr, CliError> {
        parse_expr(src, &self.decls).map_err(CliError::usage)
    }

    fn operator(&self, src: &str, space: SpaceTag) -> Result<DiffOperator, CliError> {
        DiffOperator::parse(src, &self.decls, space).map_err(CliError::usage)
    }

    fn form(&self, src: &str, space: SpaceTag) -> Result<Form, CliError> {
        parse_form(src, &self.decls, space).map_err(CliError::usage)
    }

    fn context(&self, src: &str) -> Result<EqContext, CliError> {
        EqContext::new(self.expr(src)?).map_err(CliError::usage)
    }
}

/// Parse arguments, run, print the report, and return the exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 64,
            };
            let _ = e.print();
            return code;
        }
    };
    let json = cli.json;
    let started = Instant::now();
    match execute(&cli) {
        Ok(mut report) => {
            report.timing_ms = started.elapsed().as_millis();
            if json {
                println!("{}", report.to_json());
            } else {
                print!("{}", report.render_text());
            }
            report.exit_code()
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            64
        }
        Err(CliError::Engine(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

fn execute(cli: &Cli) -> Result<Report, CliError> {
    let session = Session::new(cli)?;
    match &cli.cmd {
        Cmd::CheckVariational { e, k, q, l } => check_variational(&session, e, k, q, l),
        Cmd::FirstOrder { k } => first_order(&session, k),
        Cmd::Symplectic { s } => symplectic(&session, s),
        Cmd::Hamiltonian { s, k, p } => hamiltonian(&session, s, k, p),
        Cmd::Conservation { k, kappa } => conservation(&session, k, kappa),
        Cmd::Helmholtz { q, space } => helmholtz(&session, q, space),
        Cmd::CanonicalRep { e, omega, k } => canonical_rep(&session, e, omega, k),
        Cmd::Lambda { e, omega, k } => lambda(&session, e, omega, k),
        Cmd::Potentialize { h1, depth } => run_potentialize(&session, h1, *depth),
        Cmd::Compat { d0, h1 } => compat(&session, d0, h1),
        Cmd::Dorfman { h, c1, c2, k1, k2 } => dorfman(&session, h, c1, c2, k1, k2),
        Cmd::Corpus {
            action: CorpusAction::Run {
                filter,
                parallel,
                dir,
            },
        } => corpus_cmd(filter.as_deref(), *parallel, dir.as_deref()),
    }
}

fn check_variational(
    session: &Session,
    e_src: &str,
    k_src: &str,
    q_src: &Option<String>,
    l_src: &Option<String>,
) -> Result<Report, CliError> {
    let mut rep = Report::new("check-variational");
    let op = session.operator(e_src, SpaceTag::Sb)?;
    let ctx = session.context(k_src)?;
    rep.input("E", &op);
    rep.input("K", ctx.k());

    let q = match q_src {
        Some(src) => session.expr(src)?,
        None => {
            let q = construct_q(&op, session.order_bound, &session.base).map_err(CliError::engine)?;
            rep.note("characteristic constructed from the operator".to_string());
            q
        }
    };
    rep.witness("Q", &q);

    match l_src {
        Some(src) => {
            let l = session.expr(src)?;
            rep.input("L", &l);
            match verify_variational(&op, &ctx, &q, &l) {
                Ok(w) => {
                    rep.cert_op("operator identity", &w.operator_residual);
                    rep.cert_expr("density identity", &w.density_residual);
                    rep.verdict("variational witness verified");
                }
                Err(OplabError::ResidualNonzero { name, residual }) => {
                    rep.cert_bool(name, false, residual);
                    rep.verdict("witness rejected");
                }
                Err(other) => return Err(CliError::engine(other)),
            }
        }
        None => {
            let e_free = respace(&op, SpaceTag::Free).map_err(CliError::engine)?;
            let fq = frechet(&q, SpaceTag::Free).map_err(CliError::engine)?;
            let residual = fq
                .adjoint()
                .sub(&fq)
                .and_then(|d| d.sub(&e_free))
                .map_err(CliError::engine)?;
            rep.cert_op("operator identity", &residual);
            rep.note("density identity not checked; supply --L".to_string());
        }
    }
    Ok(rep)
}

fn first_order(session: &Session, k_src: &str) -> Result<Report, CliError> {
    let mut rep = Report::new("first-order");
    let ctx = session.context(k_src)?;
    rep.input("K", ctx.k());
    let out = match fot_test(&ctx) {
        Ok(out) => out,
        Err(e @ OplabError::NotThirdOrder(_)) => return Err(CliError::usage(e)),
        Err(e) => return Err(CliError::engine(e)),
    };
    rep.witness("kappa", &out.kappa);
    match &out.verdict {
        FotVerdict::NoOperatorNotClosed => {
            let dh = d_horizontal(&out.kappa, Some(&ctx)).map_err(CliError::engine)?;
            rep.cert_bool(
                "obstruction form closure",
                false,
                dh.to_string(),
            );
            rep.verdict("no_operator_not_closed");
        }
        FotVerdict::NoOperatorNontrivial => {
            rep.cert_bool(
                "obstruction form triviality",
                false,
                "obstruction is a nontrivial conservation law",
            );
            rep.verdict("no_operator_nontrivial");
        }
        FotVerdict::OperatorFound => {
            if let Some(r) = &out.r {
                rep.witness("R", r);
            }
            if let Some(op) = &out.operator {
                rep.witness("operator", op);
            }
            if let Some(cc) = &out.closure_certificate {
                rep.cert_form("produced operator two-form closure", cc);
            }
            rep.verdict("operator_found");
        }
        FotVerdict::Inconclusive(why) => {
            rep.push(Certificate {
                name: "obstruction form triviality".to_string(),
                residual: out.kappa.to_string(),
                ok: None,
                note: Some(why.clone()),
            });
            rep.verdict("inconclusive");
        }
    }
    Ok(rep)
}

/// The two-form closure theory is stated for odd-order operators; on
/// even-order input the result is reported with a caveat.
fn even_order_caveat(rep: &mut Report, op: &DiffOperator) {
    if op.x_order() % 2 == 0 && op.x_order() > 0 {
        rep.note(format!(
            "operator has even order {}; the closure test's backing theory is stated for odd order",
            op.x_order()
        ));
    }
}

fn symplectic(session: &Session, s_src: &str) -> Result<Report, CliError> {
    let mut rep = Report::new("symplectic");
    let op = session.operator(s_src, SpaceTag::Sb)?;
    rep.input("S", &op);
    even_order_caveat(&mut rep, &op);
    let out = is_symplectic(&op, &session.base).map_err(CliError::engine)?;
    if out.is_symplectic {
        rep.cert_op("skew residual", &out.skew_residual);
        if let Some(cr) = &out.closure_residual {
            rep.cert_form("two-form closure", cr);
        }
        if let Some(p) = &out.potential {
            rep.witness("potential", p);
        }
        rep.verdict("symplectic");
    } else {
        let reason = out.reason.clone().unwrap_or_default();
        let residual = if out.skew_residual.is_zero_op() {
            out.closure_residual
                .as_ref()
                .map(|f| f.to_string())
                .unwrap_or_else(|| reason.clone())
        } else {
            out.skew_residual.to_string()
        };
        rep.cert_bool("symplectic", false, residual);
        if !reason.is_empty() {
            rep.note(reason);
        }
        rep.verdict("not symplectic");
    }
    if let Some(note) = &out.potential_note {
        rep.note(note.clone());
    }
    Ok(rep)
}

fn hamiltonian(session: &Session, s_src: &str, k_src: &str, p_src: &str) -> Result<Report, CliError> {
    let mut rep = Report::new("hamiltonian");
    let op = session.operator(s_src, SpaceTag::Sb)?;
    let ctx = session.context(k_src)?;
    let p = session.expr(p_src)?;
    rep.input("S", &op);
    rep.input("K", ctx.k());
    rep.input("P", &p);
    let out = match hamiltonian_of(&op, &ctx, &p, &session.base) {
        Ok(out) => out,
        Err(e @ OplabError::NotAPotential(_)) => return Err(CliError::usage(e)),
        Err(e) => return Err(CliError::engine(e)),
    };
    rep.witness("scale", &out.potential_scale);
    rep.witness("gradient", &out.gradient);
    if out.is_hamiltonian {
        rep.cert_op(
            "gradient self-adjointness",
            &out.helmholtz.self_adjointness_residual,
        );
        if let Some(h) = &out.hamiltonian {
            rep.witness("H", h);
        }
        if let Some(note) = &out.helmholtz.note {
            rep.note(note.clone());
        }
        rep.verdict("hamiltonian");
    } else {
        rep.cert_bool(
            "gradient self-adjointness",
            false,
            out.helmholtz.self_adjointness_residual.to_string(),
        );
        rep.verdict("not hamiltonian");
    }
    Ok(rep)
}

fn conservation(session: &Session, k_src: &str, kappa_src: &str) -> Result<Report, CliError> {
    let mut rep = Report::new("conservation");
    let ctx = session.context(k_src)?;
    let kappa = session.form(kappa_src, SpaceTag::Eqn)?;
    rep.input("K", ctx.k());
    rep.input("kappa", &kappa);
    let out = conservation_characteristic(&kappa, &ctx).map_err(CliError::engine)?;
    match out.verdict {
        ConservationVerdict::NotConservationLaw => {
            rep.cert_bool(
                "horizontal closure",
                false,
                out.closure_residual.to_string(),
            );
            rep.verdict("not_conservation_law");
        }
        ConservationVerdict::Nontrivial => {
            rep.cert_form("horizontal closure", &out.closure_residual);
            rep.witness("Q", &out.characteristic);
            rep.verdict("nontrivial");
        }
        ConservationVerdict::Trivial => {
            rep.cert_form("horizontal closure", &out.closure_residual);
            rep.witness("Q", &out.characteristic);
            if let Some(w) = &out.witness {
                rep.witness("f", &w.f);
                if let Some(r) = &w.multiplicative {
                    rep.witness("R", r);
                }
            }
            rep.verdict("trivial");
        }
        ConservationVerdict::Inconclusive(ref why) => {
            rep.push(Certificate {
                name: "triviality".to_string(),
                residual: out.characteristic.to_string(),
                ok: None,
                note: Some(why.clone()),
            });
            rep.verdict("inconclusive");
        }
    }
    Ok(rep)
}

fn helmholtz(session: &Session, q_src: &str, space_src: &str) -> Result<Report, CliError> {
    let mut rep = Report::new("helmholtz");
    let space = match space_src {
        "sb" => SpaceTag::Sb,
        "free" => SpaceTag::Free,
        other => return Err(CliError::Usage(format!("unknown space `{other}`"))),
    };
    let q = session.expr(q_src)?;
    rep.input("Q", &q);
    let out = helmholtz_and_lagrangian(&q, space, &session.base).map_err(CliError::engine)?;
    if out.is_euler_image {
        rep.cert_op(
            "linearization self-adjointness",
            &out.self_adjointness_residual,
        );
        if let Some(a) = &out.lagrangian {
            rep.witness("A", a);
            let back = euler_lagrange(a, space).map_err(CliError::engine)?;
            rep.cert_expr("density reproduces the expression", &back.sub(&q));
        }
        rep.verdict("euler_image");
    } else {
        rep.cert_bool(
            "linearization self-adjointness",
            false,
            out.self_adjointness_residual.to_string(),
        );
        rep.verdict("not_euler_image");
    }
    if let Some(note) = &out.note {
        rep.note(note.clone());
    }
    Ok(rep)
}

fn class_into_report(rep: &mut Report, class: &CanonicalClass) {
    rep.cert_form("skewness", &class.skew_residual);
    rep.cert_form("horizontal closure", &class.closure_residual);
    rep.cert_form("cosymmetry", &class.cosymmetry_residual);
    rep.witness("omega", &class.omega);
    rep.witness("epsilon", &class.epsilon);
}

fn class_from_inputs(
    session: &Session,
    e_src: &Option<String>,
    omega_src: &Option<String>,
    ctx: &EqContext,
    rep: &mut Report,
) -> Result<Result<CanonicalClass, ()>, CliError> {
    match (e_src, omega_src) {
        (Some(e_src), None) => {
            let op = session.operator(e_src, SpaceTag::Eqn)?;
            rep.input("E", &op);
            even_order_caveat(rep, &op);
            match omega_from_operator(&op, ctx) {
                Ok(class) => Ok(Ok(class)),
                Err(CohomologyError::NotSkew(residual)) => {
                    rep.cert_bool("skewness", false, residual.to_string());
                    Ok(Err(()))
                }
                Err(e @ CohomologyError::TDerivativePresent) => Err(CliError::usage(e)),
                Err(e) => Err(CliError::engine(e)),
            }
        }
        (None, Some(omega_src)) => {
            let omega = session.form(omega_src, SpaceTag::Eqn)?;
            rep.input("omega", &omega);
            match canonical_representative(&omega, ctx) {
                Ok(class) => Ok(Ok(class)),
                Err(CohomologyError::NotClosed(residual)) => {
                    rep.cert_bool("horizontal closure", false, residual.to_string());
                    Ok(Err(()))
                }
                Err(e) => Err(CliError::engine(e)),
            }
        }
        _ => Err(CliError::Usage(
            "supply exactly one of --E or --omega".to_string(),
        )),
    }
}

fn canonical_rep(
    session: &Session,
    e_src: &Option<String>,
    omega_src: &Option<String>,
    k_src: &str,
) -> Result<Report, CliError> {
    let mut rep = Report::new("canonical-rep");
    let ctx = session.context(k_src)?;
    rep.input("K", ctx.k());
    match class_from_inputs(session, e_src, omega_src, &ctx, &mut rep)? {
        Ok(class) => {
            class_into_report(&mut rep, &class);
            rep.verdict(if class.is_closed() {
                "closed canonical class"
            } else {
                "class not closed"
            });
        }
        Err(()) => {
            rep.verdict("no canonical class");
        }
    }
    Ok(rep)
}

fn lambda(
    session: &Session,
    e_src: &Option<String>,
    omega_src: &Option<String>,
    k_src: &str,
) -> Result<Report, CliError> {
    let mut rep = Report::new("lambda");
    let ctx = session.context(k_src)?;
    rep.input("K", ctx.k());
    let class = match class_from_inputs(session, e_src, omega_src, &ctx, &mut rep)? {
        Ok(class) => class,
        Err(()) => {
            rep.verdict("no canonical class");
            return Ok(rep);
        }
    };
    rep.cert_form("skewness", &class.skew_residual);
    rep.cert_form("horizontal closure", &class.closure_residual);
    match lambda_invariant(&class.omega, &ctx, &session.base) {
        Ok(inv) => {
            let dv_eta = d_vertical(&inv.eta);
            rep.cert_form(
                "vertical primitive recovers the class form",
                &dv_eta.sub(&class.omega).map_err(CliError::engine)?,
            );
            let dh_eta = d_horizontal(&inv.eta, Some(&ctx)).map_err(CliError::engine)?;
            let dv_lambda = d_vertical(&inv.lambda);
            rep.cert_form(
                "descent compatibility",
                &dv_lambda.sub(&dh_eta).map_err(CliError::engine)?,
            );
            rep.witness("eta", &inv.eta);
            rep.witness("lambda", &inv.lambda);
            rep.witness("density", &inv.density);
            rep.verdict("invariant density produced");
        }
        Err(CohomologyError::NotVerticallyClosed(residual)) => {
            rep.cert_bool("vertical closure", false, residual.to_string());
            rep.verdict("class form not vertically closed");
        }
        Err(e) => return Err(CliError::engine(e)),
    }
    Ok(rep)
}

fn run_potentialize(session: &Session, h1_src: &str, depth: u32) -> Result<Report, CliError> {
    let mut rep = Report::new("potentialize");
    let h1 = session.expr(h1_src)?;
    rep.input("H1", &h1);
    rep.input("depth", depth);
    let out = match potentialize(&h1, depth) {
        Ok(out) => out,
        Err(e @ crate::hamtools::HamError::ZeroDepth) => return Err(CliError::usage(e)),
        Err(e) => return Err(CliError::engine(e)),
    };
    rep.witness("K", &out.rhs);
    match &out.witness {
        Some(w) => {
            rep.cert_op("operator identity", &w.operator_residual);
            rep.cert_expr("density identity", &w.density_residual);
            rep.witness("Q", &w.q);
            rep.witness("L", &w.l);
            rep.verdict("potential equation with variational witness");
        }
        None => {
            rep.note("no variational witness at even depth".to_string());
            rep.verdict("potential equation");
        }
    }
    Ok(rep)
}

fn compat(session: &Session, d0_src: &str, h1_src: &str) -> Result<Report, CliError> {
    let mut rep = Report::new("compat");
    let d0 = session.operator(d0_src, SpaceTag::Sb)?;
    let h1 = session.expr(h1_src)?;
    rep.input("D0", &d0);
    rep.input("H1", &h1);
    let out = compatibility_h2(&d0, &h1, &session.base).map_err(CliError::engine)?;
    rep.witness("G", &out.g);
    if out.compatible {
        rep.cert_expr("gradient image is a total x-derivative", &out.image_residual);
        if let Some(hh) = &out.helmholtz {
            rep.cert_op("flux self-adjointness", &hh.self_adjointness_residual);
        }
        if let Some(h2) = &out.h2 {
            rep.witness("H2", h2);
        }
        rep.verdict("compatible");
    } else {
        let residual = if out.image_residual.is_zero() {
            out.helmholtz
                .as_ref()
                .map(|hh| hh.self_adjointness_residual.to_string())
                .unwrap_or_default()
        } else {
            out.image_residual.to_string()
        };
        rep.cert_bool("compatibility", false, residual);
        rep.verdict("not compatible");
    }
    if let Some(note) = &out.note {
        rep.note(note.clone());
    }
    Ok(rep)
}

fn dorfman(
    session: &Session,
    h_src: &Option<String>,
    c1_src: &Option<String>,
    c2_src: &Option<String>,
    k1_src: &Option<String>,
    k2_src: &Option<String>,
) -> Result<Report, CliError> {
    let mut rep = Report::new("dorfman");
    let op = match (h_src, k1_src, k2_src) {
        (Some(h_src), None, None) => {
            let missing = || CliError::Usage("--h also needs --c1 and --c2".to_string());
            let h = session.expr(h_src)?;
            let c1 = session.expr(c1_src.as_deref().ok_or_else(missing)?)?;
            let c2 = session.expr(c2_src.as_deref().ok_or_else(missing)?)?;
            rep.input("h", &h);
            rep.input("c1", &c1);
            rep.input("c2", &c2);
            dorfman_operator(&h, &c1, &c2).map_err(CliError::usage)?
        }
        (None, Some(k1_src), Some(k2_src)) => {
            let k1 = session.expr(k1_src)?;
            let k2 = session.expr(k2_src)?;
            let c1 = session.expr(
                c1_src
                    .as_deref()
                    .ok_or_else(|| CliError::Usage("--k1/--k2 also need --c1".to_string()))?,
            )?;
            rep.input("k1", &k1);
            rep.input("k2", &k2);
            rep.input("c1", &c1);
            rep.note("pulled back to the first jet layer with c2 = 1".to_string());
            dorfman_pulled_back(&k1, &k2, &c1).map_err(CliError::engine)?
        }
        _ => {
            return Err(CliError::Usage(
                "supply either --h (with optional --c1/--c2) or --k1 --k2 --c1".to_string(),
            ))
        }
    };
    rep.witness("operator", &op);
    rep.cert_op("skew residual", &op.skew_residual());
    let out = is_symplectic(&op, &session.base).map_err(CliError::engine)?;
    if out.is_symplectic {
        if let Some(cr) = &out.closure_residual {
            rep.cert_form("two-form closure", cr);
        }
        if let Some(p) = &out.potential {
            rep.witness("potential", p);
        }
        rep.verdict("symplectic");
    } else {
        rep.cert_bool(
            "symplectic",
            false,
            out.reason.clone().unwrap_or_default(),
        );
        rep.verdict("not symplectic");
    }
    if let Some(note) = &out.potential_note {
        rep.note(note.clone());
    }
    Ok(rep)
}

fn corpus_cmd(
    filter: Option<&str>,
    parallel: bool,
    dir: Option<&str>,
) -> Result<Report, CliError> {
    let mut extra: Vec<(String, String)> = Vec::new();
    if let Some(dir) = dir {
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| CliError::Usage(format!("cannot read `{dir}`: {e}")))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().map(|x| x == "case").unwrap_or(false))
            .collect();
        paths.sort();
        for path in paths {
            let content = std::fs::read_to_string(&path)
                .map_err(|e| CliError::Usage(format!("cannot read `{}`: {e}", path.display())))?;
            extra.push((path.display().to_string(), content));
        }
    }
    corpus::corpus_run(filter, parallel, &extra).map_err(CliError::usage)
}
