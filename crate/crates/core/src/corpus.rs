//! Seeded random terms for property tests and benchmarks.
//!
//! Every generator is a pure function of its `ChaCha8Rng`, so a seed names a
//! corpus.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::syntax::{encode_vector, Name, Term, Ty};
use crate::types::TypingEnv;

pub type CorpusRng = ChaCha8Rng;

pub fn rng(seed: u64) -> CorpusRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Largest vector dimension generated.
pub const MAX_DIM: usize = 4;
/// Largest number of let bindings in a first-order program.
pub const MAX_DEPTH: usize = 8;
/// Intermediate values stay below this magnitude on inputs in `[-1, 1]`,
/// which keeps central differences well conditioned.
const MAX_BOUND: f64 = 1e3;

/// A closed function `λp. …` from `Rⁿ` to `Rᵐ`.
#[derive(Clone, Debug, PartialEq)]
pub struct FirstOrder {
    pub f: Term,
    pub n_in: usize,
    pub n_out: usize,
}

/// Component `i` (from 0) of a left-nested `Rⁿ` value.
pub fn component(t: Term, i: usize, n: usize) -> Term {
    if n == 1 {
        return t;
    }
    if i == n - 1 {
        Term::proj(2, t)
    } else {
        component(Term::proj(1, t), i, n - 1)
    }
}

pub fn random_point(rng: &mut CorpusRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[derive(Clone)]
struct Scalar {
    expr: Term,
    bound: f64,
}

struct Builder<'a> {
    rng: &'a mut CorpusRng,
    scalars: Vec<Scalar>,
    vectors: Vec<(Term, Vec<f64>)>,
    lets: Vec<(Name, Term)>,
}

impl Builder<'_> {
    fn pick(&mut self) -> Scalar {
        // Prefer recent values so that compositions get deep.
        let n = self.scalars.len();
        let i = if self.rng.gen_bool(0.6) { n - 1 - self.rng.gen_range(0..n.min(3)) } else { self.rng.gen_range(0..n) };
        self.scalars[i].clone()
    }

    fn bind(&mut self, e: Term) -> Term {
        let z = Name::new(&format!("z{}", self.lets.len() + 1));
        self.lets.push((z.clone(), e));
        Term::Var(z)
    }

    fn push_vector(&mut self, v: Term, bounds: &[f64]) {
        let n = bounds.len();
        for (i, &bound) in bounds.iter().enumerate() {
            self.scalars.push(Scalar { expr: component(v.clone(), i, n), bound });
        }
        self.vectors.push((v, bounds.to_vec()));
    }

    fn step(&mut self) {
        loop {
            match self.rng.gen_range(0..7) {
                0 => {
                    let a = self.pick();
                    let choices: Vec<(&str, f64)> = [
                        ("neg", a.bound),
                        ("sin", 1.0),
                        ("cos", 1.0),
                        ("pow2", a.bound * a.bound),
                        ("exp", a.bound.exp()),
                    ]
                    .into_iter()
                    .filter(|(_, b)| *b <= MAX_BOUND)
                    .collect();
                    let (f, bound) = *choices.choose(self.rng).unwrap();
                    let v = self.bind(Term::prim(f, a.expr));
                    self.scalars.push(Scalar { expr: v, bound });
                    return;
                }
                1 | 2 => {
                    let (a, b) = (self.pick(), self.pick());
                    let (f, bound) = if self.rng.gen_bool(0.5) { ("mult", a.bound * b.bound) } else { ("add", a.bound + b.bound) };
                    if bound > MAX_BOUND {
                        continue;
                    }
                    let v = self.bind(Term::prim(f, Term::pair(a.expr, b.expr)));
                    self.scalars.push(Scalar { expr: v, bound });
                    return;
                }
                3 => {
                    let (a, b) = (self.pick(), self.pick());
                    let bounds = [a.bound + 1.0, 2.0 * a.bound + b.bound * b.bound];
                    if bounds[1] > MAX_BOUND {
                        continue;
                    }
                    let v = self.bind(Term::prim("g", Term::pair(a.expr, b.expr)));
                    self.push_vector(v, &bounds);
                    return;
                }
                4 => {
                    let c: f64 = self.rng.gen_range(-2.0..2.0);
                    let c = (c * 4.0).round() / 4.0;
                    if c == 0.0 {
                        continue;
                    }
                    let v = self.bind(Term::Real(c));
                    self.scalars.push(Scalar { expr: v, bound: c.abs() });
                    return;
                }
                5 => {
                    let (a, b) = (self.pick(), self.pick());
                    let v = self.bind(Term::pair(a.expr, b.expr));
                    self.push_vector(v, &[a.bound, b.bound]);
                    return;
                }
                _ => {
                    // A sum of two vectors of equal dimension, or of two scalars.
                    let pairs: Vec<(usize, usize)> = (0..self.vectors.len())
                        .flat_map(|i| (0..self.vectors.len()).map(move |j| (i, j)))
                        .filter(|&(i, j)| self.vectors[i].1.len() == self.vectors[j].1.len())
                        .collect();
                    if let (true, Some(&(i, j))) = (self.rng.gen_bool(0.5), pairs.choose(self.rng)) {
                        let (u, ub) = self.vectors[i].clone();
                        let (w, wb) = self.vectors[j].clone();
                        let bounds: Vec<f64> = ub.iter().zip(&wb).map(|(a, b)| a + b).collect();
                        if bounds.iter().any(|&b| b > MAX_BOUND) {
                            continue;
                        }
                        let v = self.bind(Term::Sum(vec![u, w]));
                        self.push_vector(v, &bounds);
                        return;
                    }
                    let (a, b) = (self.pick(), self.pick());
                    if a.bound + b.bound > MAX_BOUND {
                        continue;
                    }
                    let v = self.bind(Term::Sum(vec![a.expr, b.expr]));
                    self.scalars.push(Scalar { expr: v, bound: a.bound + b.bound });
                    return;
                }
            }
        }
    }
}

/// A random program `λp. let z₁ = …; … in ⟨…⟩` with `n, m ≤ 4` and at most
/// [`MAX_DEPTH`] bindings, built from the registered primitives, pairs,
/// projections, sums and literals.
pub fn first_order(rng: &mut CorpusRng) -> FirstOrder {
    let n_in = rng.gen_range(1..=MAX_DIM);
    let depth = rng.gen_range(1..=MAX_DEPTH);
    let p = Name::new("p");
    let mut b = Builder { rng, scalars: Vec::new(), vectors: Vec::new(), lets: Vec::new() };
    b.push_vector(Term::Var(p.clone()), &vec![1.0; n_in]);
    for _ in 0..depth {
        b.step();
    }
    let n_out = b.rng.gen_range(1..=MAX_DIM);
    let outs: Vec<Term> = (0..n_out).map(|_| b.pick().expr).collect();
    let body = b.lets.drain(..).rev().fold(Term::tuple(outs), |acc, (z, e)| Term::let_in(z, e, acc));
    FirstOrder { f: Term::lam(p, body), n_in, n_out }
}

pub fn first_order_corpus(seed: u64, count: usize) -> Vec<FirstOrder> {
    let mut r = rng(seed);
    (0..count).map(|_| first_order(&mut r)).collect()
}

/// A closed term `S` with a free variable `x : Rⁿ` occurring linearly.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearCase {
    pub x: Name,
    pub n_in: usize,
    pub term: Term,
    pub n_out: usize,
}

impl LinearCase {
    pub fn env(&self) -> TypingEnv {
        TypingEnv::new().with(self.x.clone(), Ty::rn(self.n_in))
    }

    /// `S[u/x]`.
    pub fn at(&self, u: &[f64]) -> Term {
        crate::syntax::substitute(&self.term, &encode_vector(u), &self.x)
    }
}

const UNARY: [&str; 5] = ["neg", "sin", "cos", "pow2", "exp"];
const BINARY: [&str; 2] = ["add", "mult"];

fn linear(rng: &mut CorpusRng, x: &Name, n_in: usize, dim: usize, depth: usize) -> Term {
    let xv = Term::Var(x.clone());
    if dim == 1 {
        let choice = if depth == 0 { 0 } else { rng.gen_range(0..6) };
        return match choice {
            0 | 1 => component(xv, rng.gen_range(0..n_in), n_in),
            2 => Term::Sum(vec![linear(rng, x, n_in, 1, depth - 1), linear(rng, x, n_in, 1, depth - 1)]),
            3 => {
                let f = *UNARY.choose(rng).unwrap();
                let pt = Term::Real(rng.gen_range(-1.0..1.0));
                Term::app(Term::jac(f, linear(rng, x, n_in, 1, depth - 1)), pt)
            }
            4 => {
                let f = *BINARY.choose(rng).unwrap();
                let pt = encode_vector(&random_point(rng, 2));
                Term::app(Term::jac(f, linear(rng, x, n_in, 2, depth - 1)), pt)
            }
            _ => {
                let i = rng.gen_range(1..=2u8);
                Term::proj(i, linear(rng, x, n_in, 2, depth - 1))
            }
        };
    }
    let choice = if depth == 0 { 0 } else { rng.gen_range(0..5) };
    match choice {
        1 => Term::Sum(vec![linear(rng, x, n_in, dim, depth - 1), linear(rng, x, n_in, dim, depth - 1)]),
        2 if dim == 2 => {
            let pt = encode_vector(&random_point(rng, 2));
            Term::app(Term::jac("g", linear(rng, x, n_in, 2, depth - 1)), pt)
        }
        3 => {
            let z = Name::new(&format!("u{depth}"));
            let bound = linear(rng, x, n_in, dim, depth - 1);
            let other = linear(rng, x, n_in, dim, depth - 1);
            Term::let_in(z.clone(), bound, Term::Sum(vec![Term::Var(z), other]))
        }
        4 => Term::pair(Term::Zero(Some(Ty::rn(dim - 1))), linear(rng, x, n_in, 1, depth - 1)),
        _ => Term::pair(linear(rng, x, n_in, dim - 1, depth.saturating_sub(1)), linear(rng, x, n_in, 1, depth.saturating_sub(1))),
    }
}

pub fn linear_case(rng: &mut CorpusRng) -> LinearCase {
    let x = Name::new("x");
    let n_in = rng.gen_range(1..=3);
    let n_out = rng.gen_range(1..=3);
    let term = linear(rng, &x, n_in, n_out, 4);
    LinearCase { x, n_in, term, n_out }
}

/// An elementary term `E` over `y : R × R`, free scalars and free functions,
/// with the value `V` to pull back at.
#[derive(Clone, Debug, PartialEq)]
pub struct ElementaryCase {
    pub y: Name,
    pub e: Term,
    pub value: Term,
}

impl ElementaryCase {
    /// Types of `y` and of the free variables the generator uses.
    pub fn env() -> TypingEnv {
        TypingEnv::new()
            .with("y", Ty::rn(2))
            .with("c", Ty::Real)
            .with("k", Ty::arrow(Ty::Real, Ty::Real))
            .with("w", Ty::omega(Ty::Real))
            .with("cv", Ty::dual(Ty::Real))
    }

    pub fn omega_ty(&self) -> Ty {
        Ty::omega(self.ty())
    }

    fn ty(&self) -> Ty {
        crate::types::infer(&Self::env(), crate::prims::Registry::builtin(), &self.e).expect("generated term is typed")
    }
}

fn scalar_atom(rng: &mut CorpusRng, with_y: bool, locals: &[Name]) -> Term {
    let mut pool = vec![Term::var("c")];
    if with_y {
        pool.push(Term::proj(1, Term::var("y")));
        pool.push(Term::proj(2, Term::var("y")));
    }
    pool.extend(locals.iter().cloned().map(Term::Var));
    pool.choose(rng).unwrap().clone()
}

/// `let a = E in a` over scalar atoms.
fn scalar_series(rng: &mut CorpusRng, with_y: bool, locals: &[Name], depth: usize) -> Term {
    let a = Name::new(&format!("a{depth}"));
    let e = match rng.gen_range(0..4) {
        0 => Term::prim(UNARY.choose(rng).unwrap(), scalar_atom(rng, with_y, locals)),
        1 => Term::Sum(vec![scalar_atom(rng, with_y, locals), scalar_atom(rng, with_y, locals)]),
        2 => Term::app(Term::var("k"), scalar_atom(rng, with_y, locals)),
        _ => scalar_atom(rng, with_y, locals),
    };
    Term::let_in(a.clone(), e, Term::Var(a))
}

pub fn elementary_case(rng: &mut CorpusRng) -> ElementaryCase {
    let with_y = rng.gen_bool(0.5);
    let atom = |rng: &mut CorpusRng| scalar_atom(rng, with_y, &[]);
    let e = match rng.gen_range(0..12) {
        0 => {
            if with_y {
                Term::var("y")
            } else {
                Term::var("c")
            }
        }
        1 => atom(rng),
        2 => Term::Sum(vec![atom(rng), atom(rng)]),
        3 => Term::pair(atom(rng), atom(rng)),
        4 => Term::prim(UNARY.choose(rng).unwrap(), atom(rng)),
        5 => Term::jac(UNARY.choose(rng).unwrap(), atom(rng)),
        6 => Term::app(Term::var("k"), atom(rng)),
        7 => {
            let x = Name::new("x");
            Term::Lam(crate::syntax::Binder::typed(x.clone(), Ty::Real), Box::new(scalar_series(rng, with_y, &[x], 0)))
        }
        8 => {
            // A pullback whose body uses y through a pair with its own binder.
            let x = Name::new("x");
            let q = Name::new("q");
            let a = Name::new("a");
            let body = Term::let_in(
                q.clone(),
                Term::pair(Term::Var(x.clone()), atom(rng)),
                Term::let_in(a.clone(), Term::prim(BINARY.choose(rng).unwrap(), Term::Var(q)), Term::Var(a)),
            );
            Term::Pullback(crate::syntax::Binder::typed(x, Ty::Real), Box::new(body), Box::new(Term::var("w")))
        }
        9 => {
            // A dual map whose body scales its binder by a Jacobian at an atom.
            let x = Name::new("x");
            let j = Name::new("j");
            let a = Name::new("a");
            let body = Term::let_in(
                j.clone(),
                Term::jac(UNARY.choose(rng).unwrap(), Term::Var(x.clone())),
                Term::let_in(a.clone(), Term::app(Term::Var(j), atom(rng)), Term::Var(a)),
            );
            Term::DualMap(crate::syntax::Binder::typed(x, Ty::Real), Box::new(body), Box::new(Term::var("cv")))
        }
        10 => Term::Real((rng.gen_range(-4..=4) as f64) / 2.0 + 0.25),
        _ => Term::Zero(Some(Ty::Real)),
    };
    ElementaryCase { y: Name::new("y"), e, value: encode_vector(&random_point(rng, 2)) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anf::is_elementary;
    use crate::oracle::lower;
    use crate::prims::Registry;
    use crate::syntax::{free_vars, linear_in};
    use crate::types::infer;

    #[test]
    fn seeds_are_reproducible() {
        assert_eq!(first_order_corpus(7, 20), first_order_corpus(7, 20));
        assert_ne!(first_order_corpus(7, 20), first_order_corpus(8, 20));
    }

    #[test]
    fn programs_are_typed_lowerable_and_bounded() {
        let reg = Registry::builtin();
        let mut r = rng(1);
        for prog in first_order_corpus(3, 100) {
            let x = random_point(&mut r, prog.n_in);
            let ty = infer(&TypingEnv::new(), reg, &Term::app(prog.f.clone(), encode_vector(&x))).unwrap();
            assert_eq!(ty.flat_dim(), Some(prog.n_out), "{}", prog.f);
            let g = lower(reg, &prog.f, prog.n_in).unwrap();
            let y = g.eval(reg, &x).unwrap();
            assert!(y.iter().all(|v| v.is_finite() && v.abs() <= 4.0 * MAX_BOUND), "{} at {x:?}: {y:?}", prog.f);
        }
    }

    #[test]
    fn linear_cases_are_typed() {
        let reg = Registry::builtin();
        let mut r = rng(5);
        for _ in 0..100 {
            let c = linear_case(&mut r);
            let ty = infer(&c.env(), reg, &c.term).unwrap_or_else(|e| panic!("{}: {e}", c.term));
            assert_eq!(ty.flat_dim(), Some(c.n_out), "{}", c.term);
            assert!(free_vars(&c.term).iter().all(|v| *v == c.x));
            let _ = linear_in(&c.x, &c.term);
        }
    }

    #[test]
    fn elementary_cases_are_elementary_and_typed() {
        let mut r = rng(9);
        for _ in 0..100 {
            let c = elementary_case(&mut r);
            assert!(is_elementary(&c.e), "{}", c.e);
            let _ = c.omega_ty();
        }
    }
}
