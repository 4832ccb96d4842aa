//! Typechecking. Unannotated binders and `0` receive type variables that
//! are solved by first-order unification, which lets intermediate terms of
//! a reduction (whose binders are minted by the engine) be re-typed.

use std::fmt;

use thiserror::Error;

use crate::prims::Registry;
use crate::syntax::{linear_in, Name, Term, Ty};

/// Ordered variable typing; later bindings shadow earlier ones.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TypingEnv {
    entries: Vec<(Name, Ty)>,
}

impl TypingEnv {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, x: impl Into<Name>, t: Ty) -> Self {
        self.insert(x.into(), t);
        self
    }

    pub fn insert(&mut self, x: Name, t: Ty) {
        self.entries.retain(|(y, _)| *y != x);
        self.entries.push((x, t));
    }

    pub fn get(&self, x: &Name) -> Option<&Ty> {
        self.entries.iter().rev().find(|(y, _)| y == x).map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = &(Name, Ty)> {
        self.entries.iter()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TypeErrorKind {
    Mismatch,
    Unbound,
    NotLinear,
    NotAFunction,
    BadDimension,
    /// The term has no unique type without further annotation.
    Ambiguous,
}

impl fmt::Display for TypeErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TypeErrorKind::Mismatch => "mismatch",
            TypeErrorKind::Unbound => "unbound",
            TypeErrorKind::NotLinear => "not-linear",
            TypeErrorKind::NotAFunction => "not-a-function",
            TypeErrorKind::BadDimension => "bad-dimension",
            TypeErrorKind::Ambiguous => "ambiguous",
        })
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
#[error("type error ({kind}) in `{location}`: {message}")]
pub struct TypeError {
    pub kind: TypeErrorKind,
    /// Printout of the offending subterm.
    pub location: String,
    pub message: String,
}

fn err(kind: TypeErrorKind, t: &Term, message: impl Into<String>) -> TypeError {
    let mut location = t.to_string();
    if location.chars().count() > 200 {
        location = location.chars().take(200).collect::<String>() + "…";
    }
    TypeError { kind, location, message: message.into() }
}

/// Types with unification variables.
#[derive(Clone, Debug, PartialEq)]
enum T {
    Real,
    Prod(Box<T>, Box<T>),
    Arrow(Box<T>, Box<T>),
    Dual(Box<T>),
    Meta(usize),
}

impl T {
    fn from_ty(t: &Ty) -> T {
        match t {
            Ty::Real => T::Real,
            Ty::Prod(a, b) => T::Prod(Box::new(T::from_ty(a)), Box::new(T::from_ty(b))),
            Ty::Arrow(a, b) => T::Arrow(Box::new(T::from_ty(a)), Box::new(T::from_ty(b))),
            Ty::Dual(a) => T::Dual(Box::new(T::from_ty(a))),
        }
    }
}

struct Solver<'r> {
    reg: &'r Registry,
    subst: Vec<Option<T>>,
    /// Dual vectors fix only the number of scalars of the space they act
    /// on, not its nesting; each such space is a variable with a pending
    /// flat-dimension constraint.
    flat: Vec<(usize, usize)>,
}

impl<'r> Solver<'r> {
    fn new(reg: &'r Registry) -> Self {
        Solver { reg, subst: Vec::new(), flat: Vec::new() }
    }

    fn fresh(&mut self) -> T {
        self.subst.push(None);
        T::Meta(self.subst.len() - 1)
    }

    fn resolve(&self, t: &T) -> T {
        match t {
            T::Meta(m) => match &self.subst[*m] {
                Some(u) => self.resolve(u),
                None => t.clone(),
            },
            _ => t.clone(),
        }
    }

    fn zonk(&self, t: &T) -> T {
        match self.resolve(t) {
            T::Prod(a, b) => T::Prod(Box::new(self.zonk(&a)), Box::new(self.zonk(&b))),
            T::Arrow(a, b) => T::Arrow(Box::new(self.zonk(&a)), Box::new(self.zonk(&b))),
            T::Dual(a) => T::Dual(Box::new(self.zonk(&a))),
            other => other,
        }
    }

    fn occurs(&self, m: usize, t: &T) -> bool {
        match self.resolve(t) {
            T::Meta(k) => k == m,
            T::Prod(a, b) | T::Arrow(a, b) => self.occurs(m, &a) || self.occurs(m, &b),
            T::Dual(a) => self.occurs(m, &a),
            T::Real => false,
        }
    }

    fn unify(&mut self, a: &T, b: &T) -> bool {
        let (a, b) = (self.resolve(a), self.resolve(b));
        match (&a, &b) {
            (T::Meta(x), T::Meta(y)) if x == y => true,
            (T::Meta(m), other) | (other, T::Meta(m)) => {
                if self.occurs(*m, other) {
                    return false;
                }
                self.subst[*m] = Some(other.clone());
                true
            }
            (T::Real, T::Real) => true,
            (T::Prod(a1, a2), T::Prod(b1, b2)) | (T::Arrow(a1, a2), T::Arrow(b1, b2)) => {
                self.unify(a1, b1) && self.unify(a2, b2)
            }
            (T::Dual(x), T::Dual(y)) => self.unify(x, y),
            _ => false,
        }
    }

    /// Scalar count of a first-order type, counting unsolved variables as
    /// unknown.
    fn flat_dim(&self, t: &T) -> Result<Option<usize>, ()> {
        match self.resolve(t) {
            T::Real => Ok(Some(1)),
            T::Prod(a, b) => match (self.flat_dim(&a)?, self.flat_dim(&b)?) {
                (Some(x), Some(y)) => Ok(Some(x + y)),
                _ => Ok(None),
            },
            T::Meta(_) => Ok(None),
            _ => Err(()),
        }
    }

    fn to_ty(&self, t: &T) -> Option<Ty> {
        Some(match self.resolve(t) {
            T::Real => Ty::Real,
            T::Prod(a, b) => Ty::prod(self.to_ty(&a)?, self.to_ty(&b)?),
            T::Arrow(a, b) => Ty::arrow(self.to_ty(&a)?, self.to_ty(&b)?),
            T::Dual(a) => Ty::dual(self.to_ty(&a)?),
            T::Meta(_) => return None,
        })
    }

    fn show(&self, t: &T) -> String {
        fn go(s: &Solver, t: &T, out: &mut String, prec: u8) {
            match s.resolve(t) {
                T::Real => out.push('R'),
                T::Meta(m) => out.push_str(&format!("?{m}")),
                T::Dual(a) => {
                    go(s, &a, out, 2);
                    out.push('*');
                }
                T::Prod(a, b) => {
                    if prec > 1 {
                        out.push('(');
                    }
                    go(s, &a, out, 1);
                    out.push_str(" × ");
                    go(s, &b, out, 2);
                    if prec > 1 {
                        out.push(')');
                    }
                }
                T::Arrow(a, b) => {
                    if prec > 0 {
                        out.push('(');
                    }
                    go(s, &a, out, 1);
                    out.push_str(" ⇒ ");
                    go(s, &b, out, 0);
                    if prec > 0 {
                        out.push(')');
                    }
                }
            }
        }
        let mut out = String::new();
        go(self, t, &mut out, 0);
        out
    }

    fn expect(&mut self, t: &Term, found: &T, expected: &T) -> Result<(), TypeError> {
        if self.unify(found, expected) {
            Ok(())
        } else {
            Err(err(
                TypeErrorKind::Mismatch,
                t,
                format!("expected {}, found {}", self.show(expected), self.show(found)),
            ))
        }
    }

    fn rn(n: usize) -> T {
        T::from_ty(&Ty::rn(n))
    }

    fn infer(&mut self, scope: &mut Vec<(Name, T)>, env: &TypingEnv, t: &Term) -> Result<T, TypeError> {
        match t {
            Term::Var(x) => {
                if let Some((_, ty)) = scope.iter().rev().find(|(y, _)| y == x) {
                    return Ok(ty.clone());
                }
                env.get(x)
                    .map(T::from_ty)
                    .ok_or_else(|| err(TypeErrorKind::Unbound, t, format!("unbound variable {x}")))
            }
            Term::Real(_) => Ok(T::Real),
            Term::Zero(ann) => Ok(match ann {
                Some(ty) => T::from_ty(ty),
                None => self.fresh(),
            }),
            Term::DualVec(v) => {
                if v.is_empty() {
                    return Err(err(TypeErrorKind::BadDimension, t, "empty dual vector"));
                }
                let space = self.fresh();
                if let T::Meta(m) = space {
                    self.flat.push((m, v.len()));
                }
                Ok(T::Dual(Box::new(space)))
            }
            Term::Sum(items) => {
                let ty = self.infer(scope, env, &items[0])?;
                for it in &items[1..] {
                    let other = self.infer(scope, env, it)?;
                    self.expect(it, &other, &ty)?;
                }
                Ok(ty)
            }
            Term::Lam(b, body) => {
                let xt = self.binder_ty(&b.ty);
                scope.push((b.name.clone(), xt.clone()));
                let bt = self.infer(scope, env, body);
                scope.pop();
                Ok(T::Arrow(Box::new(xt), Box::new(bt?)))
            }
            Term::App(f, a) => {
                let ft = self.infer(scope, env, f)?;
                let (dom, cod) = match self.resolve(&ft) {
                    T::Arrow(d, c) => (*d, *c),
                    T::Meta(_) => {
                        let (d, c) = (self.fresh(), self.fresh());
                        self.unify(&ft, &T::Arrow(Box::new(d.clone()), Box::new(c.clone())));
                        (d, c)
                    }
                    other => {
                        return Err(err(
                            TypeErrorKind::NotAFunction,
                            f,
                            format!("applied term has type {}", self.show(&other)),
                        ))
                    }
                };
                let at = self.infer(scope, env, a)?;
                self.expect(a, &at, &dom)?;
                Ok(cod)
            }
            Term::Proj(i, s) => {
                let st = self.infer(scope, env, s)?;
                match self.resolve(&st) {
                    T::Prod(a, b) => Ok(if *i == 1 { *a } else { *b }),
                    T::Meta(_) => {
                        let (a, b) = (self.fresh(), self.fresh());
                        self.unify(&st, &T::Prod(Box::new(a.clone()), Box::new(b.clone())));
                        Ok(if *i == 1 { a } else { b })
                    }
                    other => Err(err(
                        TypeErrorKind::Mismatch,
                        t,
                        format!("projection from non-product {}", self.show(&other)),
                    )),
                }
            }
            Term::Pair(a, b) => {
                let at = self.infer(scope, env, a)?;
                let bt = self.infer(scope, env, b)?;
                Ok(T::Prod(Box::new(at), Box::new(bt)))
            }
            Term::Prim(f, p) | Term::Jac(f, p) => {
                let prim = self
                    .reg
                    .get(f)
                    .map_err(|_| err(TypeErrorKind::Unbound, t, format!("unknown primitive {f}")))?;
                let (n, m) = (prim.n_in, prim.n_out);
                let pt = self.infer(scope, env, p)?;
                if !self.unify(&pt, &Self::rn(n)) {
                    let kind = match self.flat_dim(&pt) {
                        Ok(_) => TypeErrorKind::BadDimension,
                        Err(()) => TypeErrorKind::Mismatch,
                    };
                    return Err(err(
                        kind,
                        t,
                        format!("{f} expects an argument of type {}, found {}", Ty::rn(n), self.show(&pt)),
                    ));
                }
                Ok(match t {
                    Term::Prim(..) => Self::rn(m),
                    _ => T::Arrow(Box::new(Self::rn(n)), Box::new(Self::rn(m))),
                })
            }
            Term::DualMap(b, s1, s2) => {
                let xt = self.binder_ty(&b.ty);
                scope.push((b.name.clone(), xt.clone()));
                let body = self.infer(scope, env, s1);
                scope.pop();
                let body = body?;
                if !linear_in(&b.name, s1) {
                    return Err(err(
                        TypeErrorKind::NotLinear,
                        t,
                        format!("{} is not linear in the dual map body", b.name),
                    ));
                }
                let ct = self.infer(scope, env, s2)?;
                self.expect(s2, &ct, &T::Dual(Box::new(body)))?;
                Ok(T::Dual(Box::new(xt)))
            }
            Term::Pullback(b, p, s) => {
                let xt = self.binder_ty(&b.ty);
                scope.push((b.name.clone(), xt.clone()));
                let body = self.infer(scope, env, p);
                scope.pop();
                let body = body?;
                let st = self.infer(scope, env, s)?;
                let omega = T::Arrow(Box::new(body.clone()), Box::new(T::Dual(Box::new(body))));
                self.expect(s, &st, &omega)?;
                Ok(T::Arrow(Box::new(xt.clone()), Box::new(T::Dual(Box::new(xt)))))
            }
        }
    }

    fn binder_ty(&mut self, ann: &Option<Ty>) -> T {
        match ann {
            Some(ty) => T::from_ty(ty),
            None => self.fresh(),
        }
    }

    /// Discharges the flat-dimension constraints of dual vectors. A space
    /// left unsolved defaults to the canonical `Rⁿ`.
    fn settle(&mut self, t: &Term) -> Result<(), TypeError> {
        let pending = std::mem::take(&mut self.flat);
        for (m, n) in pending {
            let space = T::Meta(m);
            match self.flat_dim(&space) {
                Ok(Some(d)) if d == n => {}
                Ok(None) => {
                    if let T::Meta(_) = self.resolve(&space) {
                        self.unify(&space, &Self::rn(n));
                    } else {
                        self.default_metas(&space);
                        if self.flat_dim(&space) != Ok(Some(n)) {
                            return Err(err(TypeErrorKind::BadDimension, t, "dual vector length mismatch"));
                        }
                    }
                }
                Ok(Some(d)) => {
                    return Err(err(
                        TypeErrorKind::BadDimension,
                        t,
                        format!("dual vector of length {n} acts on a space of dimension {d}"),
                    ))
                }
                Err(()) => {
                    return Err(err(
                        TypeErrorKind::Mismatch,
                        t,
                        format!("dual vector acting on non-first-order type {}", self.show(&space)),
                    ))
                }
            }
        }
        Ok(())
    }

    fn default_metas(&mut self, t: &T) {
        match self.resolve(t) {
            T::Meta(m) => self.subst[m] = Some(T::Real),
            T::Prod(a, b) | T::Arrow(a, b) => {
                self.default_metas(&a);
                self.default_metas(&b);
            }
            T::Dual(a) => self.default_metas(&a),
            T::Real => {}
        }
    }
}

/// Infers the type of `t` under `env`.
pub fn infer(env: &TypingEnv, reg: &Registry, t: &Term) -> Result<Ty, TypeError> {
    let mut s = Solver::new(reg);
    let ty = s.infer(&mut Vec::new(), env, t)?;
    s.settle(t)?;
    let ty = s.zonk(&ty);
    s.to_ty(&ty).ok_or_else(|| {
        err(
            TypeErrorKind::Ambiguous,
            t,
            format!("type {} is not determined; annotate binders or 0", s.show(&ty)),
        )
    })
}

/// Checks `t` against an expected type.
pub fn check(env: &TypingEnv, reg: &Registry, t: &Term, expected: &Ty) -> Result<(), TypeError> {
    let mut s = Solver::new(reg);
    let ty = s.infer(&mut Vec::new(), env, t)?;
    s.expect(t, &ty, &T::from_ty(expected))?;
    s.settle(t)
}

/// Subject reduction for one step: `t′` has the type inferred for `t`.
/// Errors in `t` itself propagate.
pub fn check_preserved(t: &Term, t2: &Term, env: &TypingEnv, reg: &Registry) -> Result<bool, TypeError> {
    let ty = infer(env, reg, t)?;
    Ok(check(env, reg, t2, &ty).is_ok())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{church_list, pbof, Binder};

    fn reg() -> &'static Registry {
        Registry::builtin()
    }

    fn v(s: &str) -> Term {
        Term::var(s)
    }

    fn running() -> Term {
        let body = Term::prim(
            "pow2",
            Term::prim("mult", Term::prim("g", Term::pair(Term::proj(1, v("p")), Term::proj(2, v("p"))))),
        );
        Term::app(
            Term::Pullback(Binder::typed("p".into(), Ty::rn(2)), Box::new(body), Box::new(pbof(vec![1.0]))),
            Term::pair(Term::Real(1.0), Term::Real(3.0)),
        )
    }

    #[test]
    fn running_example_has_dual_type() {
        assert_eq!(infer(&TypingEnv::new(), reg(), &running()).unwrap(), Ty::dual(Ty::rn(2)));
    }

    #[test]
    fn sum_example_types_as_list_covector() {
        let list = Ty::arrow(
            Ty::arrow(Ty::Real, Ty::arrow(Ty::Real, Ty::Real)),
            Ty::arrow(Ty::Real, Ty::Real),
        );
        let plus = Term::lam("x", Term::lam("y", Term::sum(vec![v("x"), v("y")])));
        let sum = Term::app(Term::app(v("l"), plus), Term::Real(0.0));
        let t = Term::app(
            Term::pullback("l", sum, v("w")),
            church_list(vec![Term::Real(7.0), Term::Real(-1.0)]),
        );
        let env = TypingEnv::new().with("w", Ty::omega(Ty::Real));
        assert_eq!(infer(&env, reg(), &t).unwrap(), Ty::dual(list.clone()));
        let wrong = TypingEnv::new().with("w", Ty::omega(list));
        assert_eq!(infer(&wrong, reg(), &t).unwrap_err().kind, TypeErrorKind::Mismatch);
    }

    #[test]
    fn dual_map_requires_linearity() {
        let t = Term::dual_map("x", Term::Real(5.0), Term::DualVec(vec![1.0]));
        assert_eq!(infer(&TypingEnv::new(), reg(), &t).unwrap_err().kind, TypeErrorKind::NotLinear);
    }

    #[test]
    fn primitive_dimensions_are_checked() {
        let t = Term::prim("g", Term::Real(1.0));
        assert_eq!(infer(&TypingEnv::new(), reg(), &t).unwrap_err().kind, TypeErrorKind::BadDimension);
        let t = Term::jac("g", encode(&[1.0, 0.0]));
        assert_eq!(
            infer(&TypingEnv::new(), reg(), &t).unwrap(),
            Ty::arrow(Ty::rn(2), Ty::rn(2))
        );
    }

    fn encode(v: &[f64]) -> Term {
        crate::syntax::encode_vector(v)
    }

    #[test]
    fn zero_needs_context() {
        assert_eq!(infer(&TypingEnv::new(), reg(), &Term::zero()).unwrap_err().kind, TypeErrorKind::Ambiguous);
        assert_eq!(infer(&TypingEnv::new(), reg(), &Term::Zero(Some(Ty::Real))).unwrap(), Ty::Real);
        let t = Term::sum(vec![Term::zero(), Term::Real(1.0)]);
        assert_eq!(infer(&TypingEnv::new(), reg(), &t).unwrap(), Ty::Real);
    }

    #[test]
    fn dual_vectors_fit_any_layout_of_matching_size() {
        let x = Binder::typed("x".into(), Ty::prod(Ty::Real, Ty::rn(2)));
        let t = Term::DualMap(x, Box::new(v("x")), Box::new(Term::DualVec(vec![1.0, 2.0, 3.0])));
        assert_eq!(infer(&TypingEnv::new(), reg(), &t).unwrap(), Ty::dual(Ty::prod(Ty::Real, Ty::rn(2))));
        let bad = Term::DualMap(
            Binder::typed("x".into(), Ty::rn(2)),
            Box::new(v("x")),
            Box::new(Term::DualVec(vec![1.0, 2.0, 3.0])),
        );
        assert_eq!(infer(&TypingEnv::new(), reg(), &bad).unwrap_err().kind, TypeErrorKind::BadDimension);
    }

    #[test]
    fn preservation_checks() {
        let t = Term::app(Term::lam("x", v("x")), Term::Real(2.0));
        let env = TypingEnv::new();
        assert!(check_preserved(&t, &Term::Real(2.0), &env, reg()).unwrap());
        assert!(!check_preserved(&t, &Term::DualVec(vec![2.0]), &env, reg()).unwrap());
        assert!(check_preserved(&running(), &Term::DualVec(vec![660.0, 528.0]), &env, reg()).unwrap());
    }

    #[test]
    fn errors_name_the_subterm() {
        let e = infer(&TypingEnv::new(), reg(), &Term::app(Term::Real(1.0), Term::Real(2.0))).unwrap_err();
        assert_eq!(e.kind, TypeErrorKind::NotAFunction);
        assert_eq!(e.location, "1");
        let e = infer(&TypingEnv::new(), reg(), &v("q")).unwrap_err();
        assert_eq!(e.kind, TypeErrorKind::Unbound);
    }

    #[test]
    fn weakening() {
        let t = running();
        let env = TypingEnv::new().with("unused", Ty::Real);
        assert_eq!(infer(&env, reg(), &t), infer(&TypingEnv::new(), reg(), &t));
    }
}
