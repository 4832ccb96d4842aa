//! Administrative reduction: decomposes a term into a let series of
//! elementary terms, the shape pullback reduction works on.
//!
//! Variables and projection chains of variables are atoms. Atoms are used
//! in place wherever the elementary grammar allows a variable, except as
//! operands of an application, where they are copied into a binding of
//! their own. Already elementary terms in binding position are never
//! decomposed again.

use thiserror::Error;

use crate::syntax::{is_atom, substitute, Binder, Gensym, Name, Term};

/// Whether `t` is an elementary term whose sub-bodies are let series.
pub fn is_elementary(t: &Term) -> bool {
    match t {
        Term::Zero(_) | Term::Real(_) | Term::DualVec(_) => true,
        Term::Var(_) | Term::Proj(..) => is_atom(t),
        Term::Sum(items) => items.len() == 2 && items.iter().all(is_atom),
        Term::Lam(_, body) => is_let_series(body) || matches!(**body, Term::Lam(..)) && is_elementary(body),
        Term::App(f, a) | Term::Pair(f, a) => is_atom(f) && is_atom(a),
        Term::Prim(_, a) | Term::Jac(_, a) => is_atom(a),
        Term::DualMap(_, l, a) | Term::Pullback(_, l, a) => is_let_series(l) && is_atom(a),
    }
}

/// Whether `t` is `let z₁ = E₁; …; zₙ = Eₙ in zₙ` with elementary `Eᵢ`.
pub fn is_let_series(t: &Term) -> bool {
    let mut cur = t;
    loop {
        let Term::App(h, e) = cur else { return false };
        let Term::Lam(b, rest) = &**h else { return false };
        if !is_elementary(e) {
            return false;
        }
        match &**rest {
            Term::Var(z) if *z == b.name => return true,
            next => cur = next,
        }
    }
}

/// A decomposed let series.
#[derive(Clone, Debug, PartialEq)]
pub struct LetSeries {
    pub bindings: Vec<(Binder, Term)>,
    pub result: Name,
}

impl LetSeries {
    /// Reads a let series off a term.
    pub fn from_term(t: &Term) -> Option<LetSeries> {
        if !is_let_series(t) {
            return None;
        }
        let mut bindings = Vec::new();
        let mut cur = t;
        loop {
            let Term::App(h, e) = cur else { unreachable!() };
            let Term::Lam(b, rest) = &**h else { unreachable!() };
            bindings.push((b.clone(), (**e).clone()));
            match &**rest {
                Term::Var(z) if *z == b.name => return Some(LetSeries { bindings, result: z.clone() }),
                next => cur = next,
            }
        }
    }

    pub fn to_term(&self) -> Term {
        build(self.bindings.clone(), Term::Var(self.result.clone()))
    }
}

fn build(bindings: Vec<(Binder, Term)>, fin: Term) -> Term {
    bindings
        .into_iter()
        .rev()
        .fold(fin, |acc, (b, e)| Term::app(Term::Lam(b, Box::new(acc)), e))
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnfError {
    #[error("administrative reduction ran out of fuel after {0} steps")]
    Fuel(u64),
}

/// Default step budget for [`a_normalize`].
pub const A_FUEL: u64 = 1_000_000;

/// One administrative step, or `None` when `t` is already a let series.
pub fn a_step(t: &Term, g: &mut Gensym) -> Option<Term> {
    if is_let_series(t) {
        None
    } else {
        Some(reduce(t, g))
    }
}

/// Iterates [`a_step`] to its fixed point.
pub fn a_normalize(t: &Term, g: &mut Gensym, fuel: u64) -> Result<(LetSeries, u64), AnfError> {
    g.reserve(t);
    let mut cur = t.clone();
    let mut steps = 0;
    while let Some(next) = a_step(&cur, g) {
        steps += 1;
        if steps > fuel {
            return Err(AnfError::Fuel(fuel));
        }
        cur = next;
    }
    Ok((LetSeries::from_term(&cur).expect("fixed point is a let series"), steps))
}

/// A child that needs no further work before its parent is flattened.
fn settled(t: &Term) -> bool {
    is_atom(t) || is_let_series(t)
}

/// Splits a settled child into its bindings and the atom naming its value.
fn parts(t: &Term) -> (Vec<(Binder, Term)>, Term) {
    match LetSeries::from_term(t) {
        Some(l) => (l.bindings, Term::Var(l.result)),
        None => (Vec::new(), t.clone()),
    }
}

fn bind(mut bindings: Vec<(Binder, Term)>, e: Term, g: &mut Gensym) -> Term {
    let z = g.fresh("z");
    bindings.push((Binder::new(z.clone()), e));
    build(bindings, Term::Var(z))
}

/// Like [`parts`], but an atom is copied into a binding of its own.
fn operand(t: &Term, g: &mut Gensym, out: &mut Vec<(Binder, Term)>) -> Term {
    let (bs, a) = parts(t);
    out.extend(bs);
    if is_let_series(t) {
        a
    } else {
        let z = g.fresh("z");
        out.push((Binder::new(z.clone()), a));
        Term::Var(z)
    }
}

fn reduce(t: &Term, g: &mut Gensym) -> Term {
    match t {
        Term::Var(_) | Term::Real(_) | Term::Zero(_) | Term::DualVec(_) => bind(vec![], t.clone(), g),
        Term::Proj(i, a) => {
            if is_atom(t) {
                bind(vec![], t.clone(), g)
            } else if !settled(a) {
                Term::proj(*i, reduce(a, g))
            } else {
                let (bs, r) = parts(a);
                bind(bs, Term::proj(*i, r), g)
            }
        }
        Term::Lam(b, body) => {
            if is_elementary(t) {
                bind(vec![], t.clone(), g)
            } else {
                Term::Lam(b.clone(), Box::new(reduce(body, g)))
            }
        }
        Term::DualMap(b, l, a) | Term::Pullback(b, l, a) => {
            let rebuild = |l: Term, a: Term| match t {
                Term::DualMap(..) => Term::DualMap(b.clone(), Box::new(l), Box::new(a)),
                _ => Term::Pullback(b.clone(), Box::new(l), Box::new(a)),
            };
            if !is_let_series(l) {
                rebuild(reduce(l, g), (**a).clone())
            } else if !settled(a) {
                rebuild((**l).clone(), reduce(a, g))
            } else {
                let (bs, r) = parts(a);
                bind(bs, rebuild((**l).clone(), r), g)
            }
        }
        Term::Pair(a, c) => {
            if !settled(a) {
                Term::pair(reduce(a, g), (**c).clone())
            } else if !settled(c) {
                Term::pair((**a).clone(), reduce(c, g))
            } else {
                let (mut bs, ra) = parts(a);
                let (bs2, rc) = parts(c);
                bs.extend(bs2);
                bind(bs, Term::pair(ra, rc), g)
            }
        }
        Term::Prim(f, a) | Term::Jac(f, a) => {
            if !settled(a) {
                let a = Box::new(reduce(a, g));
                match t {
                    Term::Prim(..) => Term::Prim(f.clone(), a),
                    _ => Term::Jac(f.clone(), a),
                }
            } else {
                let (bs, r) = parts(a);
                let e = match t {
                    Term::Prim(..) => Term::Prim(f.clone(), Box::new(r)),
                    _ => Term::Jac(f.clone(), Box::new(r)),
                };
                bind(bs, e, g)
            }
        }
        Term::Sum(items) => {
            if let Some(i) = items.iter().position(|s| !settled(s)) {
                let mut items = items.clone();
                items[i] = reduce(&items[i], g);
                return Term::Sum(items);
            }
            let mut bs = Vec::new();
            let mut atoms = Vec::new();
            for s in items {
                let (b, r) = parts(s);
                bs.extend(b);
                atoms.push(r);
            }
            let mut it = atoms.into_iter();
            let mut acc = it.next().expect("sums have at least two summands");
            let last = it.next_back();
            for a in it {
                let z = g.fresh("z");
                bs.push((Binder::new(z.clone()), Term::Sum(vec![acc, a])));
                acc = Term::Var(z);
            }
            let e = match last {
                Some(a) => Term::Sum(vec![acc, a]),
                None => acc,
            };
            bind(bs, e, g)
        }
        Term::App(f, a) => {
            if let Term::Lam(b, body) = &**f {
                return reduce_let(b, body, a, g);
            }
            if !settled(f) {
                Term::app(reduce(f, g), (**a).clone())
            } else if !settled(a) {
                Term::app((**f).clone(), reduce(a, g))
            } else {
                let mut bs = Vec::new();
                let hf = operand(f, g, &mut bs);
                let ha = operand(a, g, &mut bs);
                bind(bs, Term::app(hf, ha), g)
            }
        }
    }
}

/// `(λx.body) arg` is read as `let x = arg in body`.
fn reduce_let(b: &Binder, body: &Term, arg: &Term, g: &mut Gensym) -> Term {
    let with = |body: Term, arg: Term| Term::app(Term::Lam(b.clone(), Box::new(body)), arg);
    if !(settled(arg) || is_elementary(arg)) {
        return with(body.clone(), reduce(arg, g));
    }
    if !is_let_series(body) {
        return with(reduce(body, g), arg.clone());
    }
    // The argument is an atom or a let series; splice it in front.
    let (bs, r) = parts(arg);
    let rest = substitute(body, &r, &b.name);
    build(bs, rest)
}
