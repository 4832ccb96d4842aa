//! Mathematical-notation printing. The output is accepted by the parser, so
//! `parse(print(t))` gives back `t` up to renaming of bound variables.

use std::fmt::{self, Display, Formatter, Write};

use crate::syntax::{Binder, Name, Term, Ty};

const SUBSCRIPTS: [char; 10] = ['₀', '₁', '₂', '₃', '₄', '₅', '₆', '₇', '₈', '₉'];

impl Display for Name {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        f.write_str(self.base())?;
        if self.id() > 0 {
            for d in self.id().to_string().bytes() {
                f.write_char(SUBSCRIPTS[(d - b'0') as usize])?;
            }
        }
        Ok(())
    }
}

impl Display for Ty {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        fmt_ty(self, f, 0)
    }
}

// Precedence: 0 arrow, 1 product, 2 dual/atom.
fn fmt_ty(t: &Ty, f: &mut Formatter<'_>, prec: u8) -> fmt::Result {
    match t {
        Ty::Real => f.write_str("R"),
        Ty::Arrow(a, b) => {
            if prec > 0 {
                f.write_char('(')?;
            }
            fmt_ty(a, f, 1)?;
            f.write_str(" ⇒ ")?;
            fmt_ty(b, f, 0)?;
            if prec > 0 {
                f.write_char(')')?;
            }
            Ok(())
        }
        Ty::Prod(a, b) => {
            if prec > 1 {
                f.write_char('(')?;
            }
            fmt_ty(a, f, 1)?;
            f.write_str(" × ")?;
            fmt_ty(b, f, 2)?;
            if prec > 1 {
                f.write_char(')')?;
            }
            Ok(())
        }
        Ty::Dual(a) => {
            fmt_ty(a, f, 2)?;
            f.write_char('*')
        }
    }
}

pub(crate) fn fmt_real(r: f64) -> String {
    if r == 0.0 {
        // A bare `0` is the zero term.
        if r.is_sign_negative() { "-0.0".into() } else { "0.0".into() }
    } else {
        format!("{r}")
    }
}

impl Display for Term {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        fmt_term(self, f, Ctx::Top)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Ctx {
    /// Anything goes; binders extend to the right.
    Top,
    /// Summand: no bare binders or sums.
    Summand,
    /// Application head: juxtaposition allowed.
    Head,
    /// Argument: atoms only.
    Arg,
}

fn binder(b: &Binder, f: &mut Formatter<'_>) -> fmt::Result {
    write!(f, "{}", b.name)?;
    if let Some(t) = &b.ty {
        write!(f, ":{t}")?;
    }
    Ok(())
}

fn paren(f: &mut Formatter<'_>, yes: bool, body: impl FnOnce(&mut Formatter<'_>) -> fmt::Result) -> fmt::Result {
    if yes {
        f.write_char('(')?;
        body(f)?;
        f.write_char(')')
    } else {
        body(f)
    }
}

fn tuple_items(t: &Term) -> Vec<&Term> {
    match t {
        Term::Pair(a, b) => {
            let mut v = tuple_items(a);
            v.push(b);
            v
        }
        _ => vec![t],
    }
}

fn fmt_term(t: &Term, f: &mut Formatter<'_>, ctx: Ctx) -> fmt::Result {
    match t {
        Term::Var(x) => write!(f, "{x}"),
        Term::Real(r) => paren(f, *r < 0.0 && ctx == Ctx::Arg, |f| f.write_str(&fmt_real(*r))),
        Term::Zero(None) => f.write_char('0'),
        Term::Zero(Some(ty)) => write!(f, "(0 : {ty})"),
        Term::DualVec(v) => {
            f.write_char('[')?;
            for (i, r) in v.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                f.write_str(&fmt_real(*r))?;
            }
            f.write_str("]*")
        }
        Term::Pair(..) => {
            f.write_char('⟨')?;
            for (i, it) in tuple_items(t).into_iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                fmt_term(it, f, Ctx::Top)?;
            }
            f.write_char('⟩')
        }
        Term::Prim(g, a) => {
            f.write_str(g)?;
            match **a {
                Term::Pair(..) => fmt_term(a, f, Ctx::Arg),
                _ => {
                    f.write_char('(')?;
                    fmt_term(a, f, Ctx::Top)?;
                    f.write_char(')')
                }
            }
        }
        Term::Proj(i, a) => paren(f, ctx == Ctx::Arg, |f| {
            f.write_str(if *i == 1 { "π₁ " } else { "π₂ " })?;
            fmt_term(a, f, Ctx::Arg)
        }),
        Term::Jac(g, a) => paren(f, ctx == Ctx::Arg, |f| {
            write!(f, "Jac {g} ")?;
            fmt_term(a, f, Ctx::Arg)
        }),
        Term::App(h, a) => {
            if let Term::Lam(b, body) = &**h {
                return fmt_let(b, body, a, f, ctx);
            }
            paren(f, ctx == Ctx::Arg, |f| {
                fmt_term(h, f, Ctx::Head)?;
                f.write_char(' ')?;
                fmt_term(a, f, Ctx::Arg)
            })
        }
        Term::Lam(b, body) => paren(f, ctx != Ctx::Top, |f| {
            f.write_char('λ')?;
            binder(b, f)?;
            f.write_str(". ")?;
            fmt_term(body, f, Ctx::Top)
        }),
        Term::DualMap(b, s1, s2) => paren(f, ctx == Ctx::Arg, |f| {
            f.write_str("dual⟨")?;
            binder(b, f)?;
            f.write_str(". ")?;
            fmt_term(s1, f, Ctx::Top)?;
            f.write_str("⟩ ")?;
            fmt_term(s2, f, Ctx::Arg)
        }),
        Term::Pullback(b, p, s) => paren(f, ctx == Ctx::Arg, |f| {
            f.write_str("pb (λ")?;
            binder(b, f)?;
            f.write_str(". ")?;
            fmt_term(p, f, Ctx::Top)?;
            f.write_str(") ")?;
            fmt_term(s, f, Ctx::Arg)
        }),
        Term::Sum(items) => paren(f, ctx != Ctx::Top, |f| {
            for (i, it) in items.iter().enumerate() {
                if i > 0 {
                    f.write_str(" + ")?;
                }
                fmt_term(it, f, Ctx::Summand)?;
            }
            Ok(())
        }),
    }
}

/// `(λx.L) E` prints as `let x = E; … in L`.
fn fmt_let(b: &Binder, body: &Term, bound: &Term, f: &mut Formatter<'_>, ctx: Ctx) -> fmt::Result {
    paren(f, ctx != Ctx::Top, |f| {
        f.write_str("let ")?;
        binder(b, f)?;
        f.write_str(" = ")?;
        fmt_term(bound, f, Ctx::Top)?;
        let mut rest = body;
        while let Term::App(h, a) = rest {
            let Term::Lam(b, inner) = &**h else { break };
            f.write_str("; ")?;
            binder(b, f)?;
            f.write_str(" = ")?;
            fmt_term(a, f, Ctx::Top)?;
            rest = inner;
        }
        f.write_str(" in ")?;
        fmt_term(rest, f, Ctx::Top)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn types_print_in_math_notation() {
        assert_eq!(Ty::dual(Ty::Real).to_string(), "R*");
        assert_eq!(Ty::dual(Ty::rn(2)).to_string(), "(R × R)*");
        assert_eq!(Ty::rn(3).to_string(), "R × R × R");
        assert_eq!(Ty::prod(Ty::Real, Ty::rn(2)).to_string(), "R × (R × R)");
        assert_eq!(Ty::omega(Ty::Real).to_string(), "R ⇒ R*");
        let list = Ty::arrow(
            Ty::arrow(Ty::Real, Ty::arrow(Ty::Real, Ty::Real)),
            Ty::arrow(Ty::Real, Ty::Real),
        );
        assert_eq!(list.to_string(), "(R ⇒ R ⇒ R) ⇒ R ⇒ R");
    }

    #[test]
    fn terms_print_in_math_notation() {
        let t = Term::prim("g", Term::pair(Term::var("x"), Term::var("y")));
        assert_eq!(t.to_string(), "g⟨x, y⟩");
        let t = Term::let_in(Name::with_id("z", 1), Term::Real(2.0), Term::var(Name::with_id("z", 1)));
        assert_eq!(t.to_string(), "let z₁ = 2 in z₁");
        assert_eq!(Term::DualVec(vec![660.0, 528.0]).to_string(), "[660, 528]*");
        assert_eq!(Term::Real(0.0).to_string(), "0.0");
        assert_eq!(Term::zero().to_string(), "0");
        let t = Term::app(Term::var("f"), Term::app(Term::var("g"), Term::Real(-1.0)));
        assert_eq!(t.to_string(), "f (g (-1))");
    }
}
