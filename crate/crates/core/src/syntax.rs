//! Terms and types of the pullback calculus, with the syntactic operations
//! the rest of the interpreter is built on: free and linear variables,
//! capture-avoiding substitution, sum normalization and the numeral-tuple
//! encoding of vectors.

use std::collections::BTreeSet;
use std::sync::Arc;

use thiserror::Error;

/// A variable name. User-written names carry id 0; names minted by a
/// [`Gensym`] carry a positive id and print with a subscript.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Name {
    base: Arc<str>,
    id: u32,
}

impl Name {
    pub fn new(base: &str) -> Self {
        Name { base: Arc::from(base), id: 0 }
    }

    pub fn with_id(base: &str, id: u32) -> Self {
        Name { base: Arc::from(base), id }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    fn renamed(&self, id: u32) -> Self {
        Name { base: self.base.clone(), id }
    }
}

impl From<&str> for Name {
    fn from(s: &str) -> Self {
        Name::new(s)
    }
}

/// Reproducible supply of fresh names. Seed it above every id occurring in
/// the terms it will be mixed with.
#[derive(Clone, Debug)]
pub struct Gensym {
    next: u32,
}

impl Default for Gensym {
    fn default() -> Self {
        Gensym { next: 1 }
    }
}

impl Gensym {
    pub fn new() -> Self {
        Self::default()
    }

    /// A supply whose names cannot clash with any name in `t`.
    pub fn above(t: &Term) -> Self {
        Gensym { next: max_id(t) + 1 }
    }

    /// A supply whose ids all exceed `id`.
    pub fn above_id(id: u32) -> Self {
        Gensym { next: id + 1 }
    }

    pub fn reserve(&mut self, t: &Term) {
        self.next = self.next.max(max_id(t) + 1);
    }

    pub fn fresh(&mut self, base: &str) -> Name {
        let n = Name::with_id(base, self.next);
        self.next += 1;
        n
    }
}

/// Types: `R`, products, arrows and duals. `Ωσ` is `σ ⇒ σ*`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Ty {
    Real,
    Prod(Box<Ty>, Box<Ty>),
    Arrow(Box<Ty>, Box<Ty>),
    Dual(Box<Ty>),
}

impl Ty {
    pub fn prod(a: Ty, b: Ty) -> Ty {
        Ty::Prod(Box::new(a), Box::new(b))
    }

    pub fn arrow(a: Ty, b: Ty) -> Ty {
        Ty::Arrow(Box::new(a), Box::new(b))
    }

    pub fn dual(a: Ty) -> Ty {
        Ty::Dual(Box::new(a))
    }

    /// `Ωσ ≡ σ ⇒ σ*`.
    pub fn omega(a: Ty) -> Ty {
        Ty::arrow(a.clone(), Ty::dual(a))
    }

    /// `Rⁿ`, left-nested: `Rⁿ⁺¹ ≡ Rⁿ × R`.
    pub fn rn(n: usize) -> Ty {
        assert!(n >= 1, "R^0 is not a type");
        (1..n).fold(Ty::Real, |acc, _| Ty::prod(acc, Ty::Real))
    }

    /// Number of scalars in a first-order type; `None` for arrows and duals.
    pub fn flat_dim(&self) -> Option<usize> {
        match self {
            Ty::Real => Some(1),
            Ty::Prod(a, b) => Some(a.flat_dim()? + b.flat_dim()?),
            _ => None,
        }
    }
}

/// A binding occurrence with an optional type annotation.
#[derive(Clone, Debug, PartialEq)]
pub struct Binder {
    pub name: Name,
    pub ty: Option<Ty>,
}

impl Binder {
    pub fn new(name: Name) -> Self {
        Binder { name, ty: None }
    }

    pub fn typed(name: Name, ty: Ty) -> Self {
        Binder { name, ty: Some(ty) }
    }
}

pub type PrimName = Arc<str>;

/// The term language. `let x = E in L` is `(λx.L) E`.
#[derive(Clone, Debug, PartialEq)]
pub enum Term {
    Var(Name),
    Lam(Binder, Box<Term>),
    App(Box<Term>, Box<Term>),
    /// Projection; the index is 1 or 2.
    Proj(u8, Box<Term>),
    Pair(Box<Term>, Box<Term>),
    Real(f64),
    Prim(PrimName, Box<Term>),
    /// `Jac f S`: the Jacobian of `f` along the tangent `S`, a function of the base point.
    Jac(PrimName, Box<Term>),
    /// `(λx.S₁)*·S₂`.
    DualMap(Binder, Box<Term>, Box<Term>),
    /// `pb (λx.P) S`.
    Pullback(Binder, Box<Term>, Box<Term>),
    DualVec(Vec<f64>),
    /// The empty sum, optionally annotated with its type.
    Zero(Option<Ty>),
    Sum(Vec<Term>),
}

pub type VarSet = BTreeSet<Name>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SyntaxError {
    #[error("linear variables are only defined on simple terms, got {0}")]
    NotSimple(String),
    #[error("not a literal vector: {0}")]
    NotLiteral(String),
    #[error("basis index {p} out of range for dimension {n}")]
    BasisOutOfRange { p: usize, n: usize },
}

impl Term {
    pub fn var(name: impl Into<Name>) -> Term {
        Term::Var(name.into())
    }

    pub fn lam(x: impl Into<Name>, body: Term) -> Term {
        Term::Lam(Binder::new(x.into()), Box::new(body))
    }

    pub fn lam_typed(x: impl Into<Name>, ty: Ty, body: Term) -> Term {
        Term::Lam(Binder::typed(x.into(), ty), Box::new(body))
    }

    pub fn app(f: Term, a: Term) -> Term {
        Term::App(Box::new(f), Box::new(a))
    }

    pub fn let_in(x: impl Into<Name>, bound: Term, body: Term) -> Term {
        Term::app(Term::lam(x, body), bound)
    }

    pub fn proj(i: u8, t: Term) -> Term {
        debug_assert!(i == 1 || i == 2);
        Term::Proj(i, Box::new(t))
    }

    pub fn pair(a: Term, b: Term) -> Term {
        Term::Pair(Box::new(a), Box::new(b))
    }

    /// Left-nested tuple `⟨t₁,…,tₙ⟩`; a single element is itself.
    pub fn tuple(items: Vec<Term>) -> Term {
        let mut it = items.into_iter();
        let first = it.next().expect("empty tuple");
        it.fold(first, Term::pair)
    }

    pub fn prim(f: &str, a: Term) -> Term {
        Term::Prim(Arc::from(f), Box::new(a))
    }

    pub fn jac(f: &str, a: Term) -> Term {
        Term::Jac(Arc::from(f), Box::new(a))
    }

    pub fn dual_map(x: impl Into<Name>, body: Term, cov: Term) -> Term {
        Term::DualMap(Binder::new(x.into()), Box::new(body), Box::new(cov))
    }

    pub fn pullback(x: impl Into<Name>, body: Term, omega: Term) -> Term {
        Term::Pullback(Binder::new(x.into()), Box::new(body), Box::new(omega))
    }

    pub fn zero() -> Term {
        Term::Zero(None)
    }

    /// Builds a sum and normalizes the top level.
    pub fn sum(items: Vec<Term>) -> Term {
        normalize_sum_shallow(Term::Sum(items))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Term::Zero(_))
    }

    /// Number of AST nodes.
    pub fn size(&self) -> usize {
        1 + children(self).iter().map(|c| c.size()).sum::<usize>()
    }
}

/// Immediate subterms in evaluation order.
pub fn children(t: &Term) -> Vec<&Term> {
    match t {
        Term::Var(_) | Term::Real(_) | Term::DualVec(_) | Term::Zero(_) => vec![],
        Term::Lam(_, b) | Term::Proj(_, b) | Term::Prim(_, b) | Term::Jac(_, b) => vec![b],
        Term::App(a, b) | Term::Pair(a, b) | Term::DualMap(_, a, b) | Term::Pullback(_, a, b) => {
            vec![a, b]
        }
        Term::Sum(items) => items.iter().collect(),
    }
}

/// Largest gensym id occurring anywhere in `t`, bound or free.
pub fn max_id(t: &Term) -> u32 {
    fn go(t: &Term, m: &mut u32) {
        match t {
            Term::Var(n) => *m = (*m).max(n.id),
            Term::Lam(b, _) | Term::DualMap(b, _, _) | Term::Pullback(b, _, _) => {
                *m = (*m).max(b.name.id)
            }
            _ => {}
        }
        for c in children(t) {
            go(c, m);
        }
    }
    let mut m = 0;
    go(t, &mut m);
    m
}

/// Free variables. Binders of `Lam`, and of the first argument of `DualMap`
/// and `Pullback`, scope only over that argument.
pub fn free_vars(t: &Term) -> VarSet {
    let mut out = VarSet::new();
    let mut bound = Vec::new();
    fv_into(t, &mut bound, &mut out);
    out
}

fn fv_into(t: &Term, bound: &mut Vec<Name>, out: &mut VarSet) {
    match t {
        Term::Var(x) => {
            if !bound.contains(x) {
                out.insert(x.clone());
            }
        }
        Term::Lam(b, body) => {
            bound.push(b.name.clone());
            fv_into(body, bound, out);
            bound.pop();
        }
        Term::DualMap(b, s1, s2) | Term::Pullback(b, s1, s2) => {
            bound.push(b.name.clone());
            fv_into(s1, bound, out);
            bound.pop();
            fv_into(s2, bound, out);
        }
        _ => {
            for c in children(t) {
                fv_into(c, bound, out);
            }
        }
    }
}

/// Whether `x` occurs free in `t`.
pub fn occurs_free(x: &Name, t: &Term) -> bool {
    match t {
        Term::Var(y) => x == y,
        Term::Lam(b, body) => b.name != *x && occurs_free(x, body),
        Term::DualMap(b, s1, s2) | Term::Pullback(b, s1, s2) => {
            (b.name != *x && occurs_free(x, s1)) || occurs_free(x, s2)
        }
        _ => children(t).into_iter().any(|c| occurs_free(x, c)),
    }
}

/// The linear variables of a simple term.
pub fn linear_vars(t: &Term) -> Result<VarSet, SyntaxError> {
    match t {
        Term::Sum(_) | Term::Zero(_) => Err(SyntaxError::NotSimple(t.to_string())),
        _ => Ok(lin(t)),
    }
}

fn lin(t: &Term) -> VarSet {
    match t {
        Term::Var(x) => VarSet::from([x.clone()]),
        Term::Lam(b, s) => {
            let mut l = lin(s);
            l.remove(&b.name);
            l
        }
        Term::App(s, p) => {
            let fv = free_vars(p);
            lin(s).into_iter().filter(|x| !fv.contains(x)).collect()
        }
        Term::Proj(_, s) | Term::Jac(_, s) => lin(s),
        Term::Pair(a, b) => {
            let lb = lin(b);
            lin(a).into_iter().filter(|x| lb.contains(x)).collect()
        }
        Term::DualMap(b, s1, s2) => {
            let mut l1 = lin(s1);
            l1.remove(&b.name);
            let fv1 = free_vars(&Term::DualMap(b.clone(), s1.clone(), Box::new(Term::zero())));
            let fv2 = free_vars(s2);
            let mut out: VarSet = l1.into_iter().filter(|x| !fv2.contains(x)).collect();
            out.extend(lin(s2).into_iter().filter(|x| !fv1.contains(x)));
            out
        }
        Term::Sum(items) => {
            let mut it = items.iter().map(lin);
            let first = it.next().unwrap_or_default();
            it.fold(first, |acc, l| acc.intersection(&l).cloned().collect())
        }
        _ => VarSet::new(),
    }
}

/// Linearity of `x` in `t`, extending `lin` to sums, zero and lets: `0` is
/// linear in every variable, a sum is linear when each summand is, and
/// `let z = P in L` is linear in `x` when `P` is and `L` is linear in `z`
/// alone, or failing that when `L[P/z]` is linear in `x`.
pub fn linear_in(x: &Name, t: &Term) -> bool {
    match t {
        Term::Var(y) => x == y,
        Term::Zero(_) => true,
        Term::Sum(items) => items.iter().all(|s| linear_in(x, s)),
        Term::Lam(b, s) => b.name != *x && linear_in(x, s),
        Term::App(s, p) => {
            let through_let = match &**s {
                // `let z = P in L`: a linear map composed with a linear map.
                Term::Lam(z, l) if z.name != *x => {
                    (linear_in(x, p) && linear_in(&z.name, l) && !occurs_free(x, l))
                        || (occurs_free(x, l) && linear_in(x, &substitute(l, p, &z.name)))
                }
                _ => false,
            };
            (linear_in(x, s) && !occurs_free(x, p)) || through_let
        }
        Term::Proj(_, s) | Term::Jac(_, s) => linear_in(x, s),
        Term::Pair(a, b) => linear_in(x, a) && linear_in(x, b),
        Term::DualMap(b, s1, s2) => {
            let in_body = b.name != *x && occurs_free(x, s1);
            (b.name != *x && linear_in(x, s1) && !occurs_free(x, s2))
                || (linear_in(x, s2) && !in_body)
        }
        _ => false,
    }
}

/// Capture-avoiding `t[p/x]` with the linear-sum law: a sum (or zero)
/// substituted for a variable in linear position distributes over the
/// result.
pub fn substitute(t: &Term, p: &Term, x: &Name) -> Term {
    match p {
        Term::Sum(items) if linear_in(x, t) && occurs_free(x, t) => {
            Term::sum(items.iter().map(|pi| substitute(t, pi, x)).collect())
        }
        Term::Zero(_) if linear_in(x, t) && occurs_free(x, t) => Term::zero(),
        _ => {
            let fv = free_vars(p);
            subst(t, p, x, &fv)
        }
    }
}

fn subst(t: &Term, p: &Term, x: &Name, fv_p: &VarSet) -> Term {
    match t {
        Term::Var(y) => {
            if y == x {
                p.clone()
            } else {
                t.clone()
            }
        }
        Term::Lam(b, body) => {
            let (b, body) = subst_under(b, body, p, x, fv_p);
            Term::Lam(b, Box::new(body))
        }
        Term::DualMap(b, s1, s2) => {
            let (b, s1) = subst_under(b, s1, p, x, fv_p);
            Term::DualMap(b, Box::new(s1), Box::new(subst(s2, p, x, fv_p)))
        }
        Term::Pullback(b, s1, s2) => {
            let (b, s1) = subst_under(b, s1, p, x, fv_p);
            Term::Pullback(b, Box::new(s1), Box::new(subst(s2, p, x, fv_p)))
        }
        _ if !occurs_free(x, t) => t.clone(),
        Term::App(a, b) => Term::app(subst(a, p, x, fv_p), subst(b, p, x, fv_p)),
        Term::Proj(i, a) => Term::proj(*i, subst(a, p, x, fv_p)),
        Term::Pair(a, b) => Term::pair(subst(a, p, x, fv_p), subst(b, p, x, fv_p)),
        Term::Prim(f, a) => Term::Prim(f.clone(), Box::new(subst(a, p, x, fv_p))),
        Term::Jac(f, a) => Term::Jac(f.clone(), Box::new(subst(a, p, x, fv_p))),
        Term::Sum(items) => Term::sum(items.iter().map(|s| subst(s, p, x, fv_p)).collect()),
        Term::Real(_) | Term::DualVec(_) | Term::Zero(_) => t.clone(),
    }
}

fn subst_under(b: &Binder, body: &Term, p: &Term, x: &Name, fv_p: &VarSet) -> (Binder, Term) {
    if b.name == *x || !occurs_free(x, body) {
        return (b.clone(), body.clone());
    }
    if fv_p.contains(&b.name) {
        let fresh = b.name.renamed(max_id(body).max(max_id(p)).max(b.name.id).max(x.id) + 1);
        let renamed = subst(body, &Term::Var(fresh.clone()), &b.name, &VarSet::from([fresh.clone()]));
        let nb = Binder { name: fresh, ty: b.ty.clone() };
        return (nb, subst(&renamed, p, x, fv_p));
    }
    (b.clone(), subst(body, p, x, fv_p))
}

/// Normalizes every sum in `t`: nested sums are flattened, zero summands
/// dropped and singleton sums replaced by their element. Summands keep
/// source order.
pub fn normalize_sum(t: &Term) -> Term {
    let t = map_children(t, normalize_sum);
    normalize_sum_shallow(t)
}

/// Normalizes the top-level sum of `t` only.
pub fn normalize_sum_shallow(t: Term) -> Term {
    match t {
        Term::Sum(items) => {
            let mut flat = Vec::with_capacity(items.len());
            for it in items {
                match normalize_sum_shallow(it) {
                    Term::Sum(inner) => flat.extend(inner),
                    Term::Zero(_) => {}
                    other => flat.push(other),
                }
            }
            match flat.len() {
                0 => Term::zero(),
                1 => flat.pop().unwrap(),
                _ => Term::Sum(flat),
            }
        }
        other => other,
    }
}

/// Rebuilds `t` with `f` applied to each immediate subterm.
pub fn map_children(t: &Term, mut f: impl FnMut(&Term) -> Term) -> Term {
    match t {
        Term::Var(_) | Term::Real(_) | Term::DualVec(_) | Term::Zero(_) => t.clone(),
        Term::Lam(b, s) => Term::Lam(b.clone(), Box::new(f(s))),
        Term::App(a, b) => Term::app(f(a), f(b)),
        Term::Proj(i, a) => Term::proj(*i, f(a)),
        Term::Pair(a, b) => Term::pair(f(a), f(b)),
        Term::Prim(g, a) => Term::Prim(g.clone(), Box::new(f(a))),
        Term::Jac(g, a) => Term::Jac(g.clone(), Box::new(f(a))),
        Term::DualMap(b, s1, s2) => Term::DualMap(b.clone(), Box::new(f(s1)), Box::new(f(s2))),
        Term::Pullback(b, s1, s2) => Term::Pullback(b.clone(), Box::new(f(s1)), Box::new(f(s2))),
        Term::Sum(items) => Term::Sum(items.iter().map(f).collect()),
    }
}

/// `⟨r₁,…,rₙ⟩` as left-nested pairs of literals.
pub fn encode_vector(v: &[f64]) -> Term {
    Term::tuple(v.iter().map(|&r| Term::Real(r)).collect())
}

/// Inverse of [`encode_vector`]: accepts a single literal or a left-nested
/// pair whose right components are literals.
pub fn decode_vector(t: &Term) -> Result<Vec<f64>, SyntaxError> {
    fn go(t: &Term, out: &mut Vec<f64>) -> bool {
        match t {
            Term::Real(r) => {
                out.push(*r);
                true
            }
            Term::Pair(a, b) => match **b {
                Term::Real(r) => {
                    let ok = go(a, out);
                    out.push(r);
                    ok
                }
                _ => false,
            },
            _ => false,
        }
    }
    let mut out = Vec::new();
    if go(t, &mut out) {
        Ok(out)
    } else {
        Err(SyntaxError::NotLiteral(t.to_string()))
    }
}

/// Reads a value of type `Rⁿ` laid out canonically, treating `0` as the
/// zero vector of whatever dimension its position demands.
pub fn decode_canonical(t: &Term, n: usize) -> Option<Vec<f64>> {
    match t {
        Term::Zero(_) => Some(vec![0.0; n]),
        Term::Real(r) if n == 1 => Some(vec![*r]),
        Term::Pair(a, b) if n >= 2 => {
            let mut v = decode_canonical(a, n - 1)?;
            v.extend(decode_canonical(b, 1)?);
            Some(v)
        }
        _ => None,
    }
}

/// All leaves of a tree of pairs of literals, left to right.
pub fn flatten_literal(t: &Term) -> Option<Vec<f64>> {
    fn go(t: &Term, out: &mut Vec<f64>) -> bool {
        match t {
            Term::Real(r) => {
                out.push(*r);
                true
            }
            Term::Pair(a, b) => go(a, out) && go(b, out),
            _ => false,
        }
    }
    let mut out = Vec::new();
    go(t, &mut out).then_some(out)
}

/// The constant 1-form `λx.(e_p)*` on `Rⁿ`, with `p` counted from 1.
pub fn basis_dual(p: usize, n: usize) -> Result<Term, SyntaxError> {
    if p == 0 || p > n {
        return Err(SyntaxError::BasisOutOfRange { p, n });
    }
    let mut e = vec![0.0; n];
    e[p - 1] = 1.0;
    Ok(Term::lam("x", Term::DualVec(e)))
}

/// `pbof r⃗ ≡ λx.r⃗*`.
pub fn pbof(r: Vec<f64>) -> Term {
    Term::lam("x", Term::DualVec(r))
}

/// Church list `[x₁,…,xₙ] ≡ λf d. f xₙ (… (f x₁ d))`.
pub fn church_list(items: Vec<Term>) -> Term {
    let f = Name::new("f");
    let d = Name::new("d");
    let body = items.into_iter().fold(Term::Var(d.clone()), |acc, x| {
        Term::app(Term::app(Term::Var(f.clone()), x), acc)
    });
    Term::lam(f, Term::lam(d, body))
}

/// Structural equality up to renaming of bound variables. Binder type
/// annotations are ignored.
pub fn alpha_eq(a: &Term, b: &Term) -> bool {
    fn go(a: &Term, b: &Term, env: &mut Vec<(Name, Name)>) -> bool {
        match (a, b) {
            (Term::Var(x), Term::Var(y)) => {
                for (l, r) in env.iter().rev() {
                    if l == x || r == y {
                        return l == x && r == y;
                    }
                }
                x == y
            }
            (Term::Lam(bx, s), Term::Lam(by, t)) => {
                env.push((bx.name.clone(), by.name.clone()));
                let ok = go(s, t, env);
                env.pop();
                ok
            }
            (Term::DualMap(bx, s1, s2), Term::DualMap(by, t1, t2))
            | (Term::Pullback(bx, s1, s2), Term::Pullback(by, t1, t2)) => {
                env.push((bx.name.clone(), by.name.clone()));
                let ok = go(s1, t1, env);
                env.pop();
                ok && go(s2, t2, env)
            }
            (Term::App(a1, a2), Term::App(b1, b2)) | (Term::Pair(a1, a2), Term::Pair(b1, b2)) => {
                go(a1, b1, env) && go(a2, b2, env)
            }
            (Term::Proj(i, s), Term::Proj(j, t)) => i == j && go(s, t, env),
            (Term::Prim(f, s), Term::Prim(g, t)) | (Term::Jac(f, s), Term::Jac(g, t)) => {
                f == g && go(s, t, env)
            }
            (Term::Real(x), Term::Real(y)) => x == y,
            (Term::DualVec(x), Term::DualVec(y)) => x == y,
            (Term::Zero(_), Term::Zero(_)) => true,
            (Term::Sum(xs), Term::Sum(ys)) => {
                xs.len() == ys.len() && xs.iter().zip(ys).all(|(s, t)| go(s, t, env))
            }
            _ => false,
        }
    }
    go(a, b, &mut Vec::new())
}

/// A variable, or a chain of projections ending in one. Pattern binders
/// desugar to such chains, so they play the role of variables in
/// elementary terms.
pub fn atom_root(t: &Term) -> Option<(&Name, Vec<u8>)> {
    let mut path = Vec::new();
    let mut cur = t;
    loop {
        match cur {
            Term::Var(x) => {
                path.reverse();
                return Some((x, path));
            }
            Term::Proj(i, s) => {
                path.push(*i);
                cur = s;
            }
            _ => return None,
        }
    }
}

pub fn is_atom(t: &Term) -> bool {
    atom_root(t).is_some()
}

/// Applies a projection path (innermost first) to `t`.
pub fn apply_path(t: Term, path: &[u8]) -> Term {
    path.iter().fold(t, |acc, &i| Term::proj(i, acc))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: &str) -> Term {
        Term::var(s)
    }

    fn set(xs: &[&str]) -> VarSet {
        xs.iter().map(|s| Name::new(s)).collect()
    }

    #[test]
    fn free_vars_respects_binders() {
        assert_eq!(free_vars(&v("x")), set(&["x"]));
        assert_eq!(free_vars(&Term::lam("x", Term::app(v("x"), v("y")))), set(&["y"]));
        let dm = Term::dual_map("x", Term::sum(vec![v("x"), v("z")]), v("w"));
        assert_eq!(free_vars(&dm), set(&["z", "w"]));
    }

    #[test]
    fn linear_vars_examples() {
        let t = Term::app(Term::app(v("x"), v("z")), Term::app(v("y"), v("z")));
        assert_eq!(linear_vars(&t).unwrap(), set(&["x"]));
        let t = Term::pair(Term::proj(1, v("y")), Term::proj(2, v("y")));
        assert_eq!(linear_vars(&t).unwrap(), set(&["y"]));
        assert!(linear_vars(&Term::prim("f", v("y"))).unwrap().is_empty());
        assert!(linear_vars(&Term::zero()).is_err());
        assert!(linear_vars(&Term::sum(vec![v("a"), v("b")])).is_err());
    }

    #[test]
    fn extended_linearity_treats_zero_as_linear() {
        let x = Name::new("x");
        assert!(linear_in(&x, &Term::pair(v("x"), Term::zero())));
        assert!(!linear_in(&x, &Term::pair(v("x"), Term::Real(5.0))));
        assert!(!linear_in(&x, &Term::Real(5.0)));
    }

    #[test]
    fn let_bound_zero_keeps_a_pair_linear() {
        let x = Name::new("x");
        let t = Term::let_in("z", Term::zero(), Term::pair(v("x"), v("z")));
        assert!(linear_in(&x, &t));
        let t = Term::let_in("z", Term::Real(1.0), Term::pair(v("x"), v("z")));
        assert!(!linear_in(&x, &t));
    }

    #[test]
    fn substitution_basics() {
        let x = Name::new("x");
        assert_eq!(substitute(&v("x"), &Term::Real(2.0), &x), Term::Real(2.0));
        // (λy.x)[y/x] renames the binder.
        let t = Term::lam("y", v("x"));
        let r = substitute(&t, &v("y"), &x);
        match &r {
            Term::Lam(b, body) => {
                assert_ne!(b.name, Name::new("y"));
                assert_eq!(**body, v("y"));
            }
            _ => panic!("{r:?}"),
        }
    }

    #[test]
    fn sum_distributes_over_linear_position() {
        let f = Name::new("f");
        let t = Term::app(v("f"), v("p"));
        let s = Term::sum(vec![v("s1"), v("s2")]);
        let r = substitute(&t, &s, &f);
        assert_eq!(
            r,
            Term::Sum(vec![Term::app(v("s1"), v("p")), Term::app(v("s2"), v("p"))])
        );
        // Non-linear position keeps the sum whole.
        let t = Term::prim("sin", v("f"));
        assert_eq!(substitute(&t, &s, &f), Term::prim("sin", s.clone()));
        // Zero into a linear position is zero.
        assert_eq!(substitute(&Term::proj(1, v("f")), &Term::zero(), &f), Term::zero());
    }

    #[test]
    fn substitute_self_is_identity() {
        let t = Term::lam("y", Term::pair(v("x"), v("y")));
        let x = Name::new("x");
        assert!(alpha_eq(&substitute(&t, &v("x"), &x), &t));
    }

    #[test]
    fn sum_normalization() {
        let s = v("s");
        assert_eq!(normalize_sum(&Term::Sum(vec![Term::zero(), s.clone()])), s);
        let nested = Term::Sum(vec![Term::Sum(vec![v("a"), v("b")]), v("c")]);
        assert_eq!(normalize_sum(&nested), Term::Sum(vec![v("a"), v("b"), v("c")]));
        assert_eq!(normalize_sum(&Term::Sum(vec![Term::zero(), Term::zero()])), Term::zero());
    }

    #[test]
    fn vector_encoding() {
        assert_eq!(encode_vector(&[1.0, 3.0]), Term::pair(Term::Real(1.0), Term::Real(3.0)));
        assert_eq!(encode_vector(&[7.0]), Term::Real(7.0));
        assert_eq!(decode_vector(&encode_vector(&[2.0, 11.0, 22.0])).unwrap(), vec![2.0, 11.0, 22.0]);
        assert!(decode_vector(&v("x")).is_err());
        let t = Term::pair(Term::zero(), Term::Real(4.0));
        assert_eq!(decode_canonical(&t, 3), Some(vec![0.0, 0.0, 4.0]));
        assert_eq!(decode_canonical(&Term::pair(Term::Real(1.0), v("x")), 2), None);
        let t = Term::pair(Term::pair(Term::zero(), Term::Real(1.0)), Term::Real(4.0));
        assert_eq!(decode_canonical(&t, 3), Some(vec![0.0, 1.0, 4.0]));
    }

    #[test]
    fn basis_duals() {
        assert_eq!(basis_dual(1, 1).unwrap(), Term::lam("x", Term::DualVec(vec![1.0])));
        assert_eq!(basis_dual(2, 3).unwrap(), Term::lam("x", Term::DualVec(vec![0.0, 1.0, 0.0])));
        assert!(basis_dual(4, 3).is_err());
    }

    #[test]
    fn alpha_equivalence() {
        let a = Term::lam("x", v("x"));
        let b = Term::lam("y", v("y"));
        assert!(alpha_eq(&a, &b));
        assert!(!alpha_eq(&Term::lam("x", v("z")), &Term::lam("y", v("y"))));
    }

    #[test]
    fn gensym_is_reproducible_and_fresh() {
        let t = Term::var(Name::with_id("z", 4));
        let mut g1 = Gensym::above(&t);
        let mut g2 = Gensym::above(&t);
        assert_eq!(g1.fresh("v"), g2.fresh("v"));
        assert_eq!(g1.fresh("v").id(), 6);
    }
}
