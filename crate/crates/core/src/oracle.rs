//! A first-order reference for the engine: forward- and reverse-mode AD over
//! straight-line computation graphs, the numeric pullback of a 1-form, and
//! central finite differences.
//!
//! A graph is a chain `g₁ ; … ; gₖ` of maps on a flat state vector. Nodes
//! that compute a primitive keep the old state and append the outputs, so
//! diamonds in the dataflow need no special treatment; `Select` rearranges,
//! drops or duplicates slots.

use std::collections::HashMap;

use thiserror::Error;

use crate::prims::{Matrix, PrimError, Registry};
use crate::syntax::{Name, PrimName, Term};

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    /// Replaces the whole state with `f(state)`.
    Map(PrimName),
    /// Appends `f(state[inputs])`.
    Prim { name: PrimName, inputs: Vec<usize> },
    /// Appends a constant.
    Const(f64),
    /// Appends `state[lhs[i]] + state[rhs[i]]` for each `i`.
    Add { lhs: Vec<usize>, rhs: Vec<usize> },
    /// Replaces the state with the selected slots.
    Select(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    pub n_in: usize,
    pub nodes: Vec<Node>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("graph expects {expected} inputs, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("node {node}: slot {slot} is out of range for a state of width {width}")]
    Wiring { node: usize, slot: usize, width: usize },
    #[error("output row {p} out of range for {m} outputs")]
    Row { p: usize, m: usize },
    #[error("cannot lower `{0}` to a graph")]
    Unsupported(String),
    #[error(transparent)]
    Prim(#[from] PrimError),
}

impl Graph {
    /// The chain `g ; mult ; pow2` of the running example.
    pub fn running() -> Graph {
        Graph { n_in: 2, nodes: vec![Node::Map("g".into()), Node::Map("mult".into()), Node::Map("pow2".into())] }
    }

    pub fn identity(n: usize) -> Graph {
        Graph { n_in: n, nodes: vec![] }
    }

    /// Width of the state after each node, starting with the input.
    pub fn widths(&self, reg: &Registry) -> Result<Vec<usize>, OracleError> {
        let mut w = vec![self.n_in];
        for (k, node) in self.nodes.iter().enumerate() {
            let cur = *w.last().unwrap();
            let check = |slots: &[usize]| match slots.iter().find(|&&s| s >= cur) {
                Some(&slot) => Err(OracleError::Wiring { node: k, slot, width: cur }),
                None => Ok(()),
            };
            let next = match node {
                Node::Map(f) => {
                    let p = reg.get(f)?;
                    if p.n_in != cur {
                        return Err(PrimError::Dimension { name: f.to_string(), expected: p.n_in, got: cur }.into());
                    }
                    p.n_out
                }
                Node::Prim { name, inputs } => {
                    check(inputs)?;
                    let p = reg.get(name)?;
                    if p.n_in != inputs.len() {
                        return Err(PrimError::Dimension { name: name.to_string(), expected: p.n_in, got: inputs.len() }.into());
                    }
                    cur + p.n_out
                }
                Node::Const(_) => cur + 1,
                Node::Add { lhs, rhs } => {
                    check(lhs)?;
                    check(rhs)?;
                    if lhs.len() != rhs.len() {
                        return Err(OracleError::Dimension { expected: lhs.len(), got: rhs.len() });
                    }
                    cur + lhs.len()
                }
                Node::Select(idx) => {
                    check(idx)?;
                    idx.len()
                }
            };
            w.push(next);
        }
        Ok(w)
    }

    pub fn n_out(&self, reg: &Registry) -> Result<usize, OracleError> {
        Ok(*self.widths(reg)?.last().unwrap())
    }

    fn apply(node: &Node, reg: &Registry, s: &[f64]) -> Result<Vec<f64>, OracleError> {
        Ok(match node {
            Node::Map(f) => reg.eval_prim(f, s)?,
            Node::Prim { name, inputs } => {
                let arg: Vec<f64> = inputs.iter().map(|&i| s[i]).collect();
                let mut out = s.to_vec();
                out.extend(reg.eval_prim(name, &arg)?);
                out
            }
            Node::Const(c) => {
                let mut out = s.to_vec();
                out.push(*c);
                out
            }
            Node::Add { lhs, rhs } => {
                let mut out = s.to_vec();
                out.extend(lhs.iter().zip(rhs).map(|(&a, &b)| s[a] + s[b]));
                out
            }
            Node::Select(idx) => idx.iter().map(|&i| s[i]).collect(),
        })
    }

    /// Dense Jacobian of a single node at state `s`.
    fn node_jacobian(node: &Node, reg: &Registry, s: &[f64]) -> Result<Matrix, OracleError> {
        let d = s.len();
        let keep = |extra: usize| {
            let mut j = Matrix::zeros(d + extra, d);
            for i in 0..d {
                j.set(i, i, 1.0);
            }
            j
        };
        Ok(match node {
            Node::Map(f) => reg.get(f)?.jacobian_at(s),
            Node::Prim { name, inputs } => {
                let p = reg.get(name)?;
                let arg: Vec<f64> = inputs.iter().map(|&i| s[i]).collect();
                let jf = p.jacobian_at(&arg);
                let mut j = keep(p.n_out);
                for r in 0..p.n_out {
                    for (c, &slot) in inputs.iter().enumerate() {
                        j.set(d + r, slot, j.get(d + r, slot) + jf.get(r, c));
                    }
                }
                j
            }
            Node::Const(_) => keep(1),
            Node::Add { lhs, rhs } => {
                let mut j = keep(lhs.len());
                for (k, (&a, &b)) in lhs.iter().zip(rhs).enumerate() {
                    j.set(d + k, a, j.get(d + k, a) + 1.0);
                    j.set(d + k, b, j.get(d + k, b) + 1.0);
                }
                j
            }
            Node::Select(idx) => {
                let mut j = Matrix::zeros(idx.len(), d);
                for (r, &i) in idx.iter().enumerate() {
                    j.set(r, i, 1.0);
                }
                j
            }
        })
    }

    /// The states `x₀, x₁, …, xₖ` of the forward phase.
    pub fn forward_states(&self, reg: &Registry, x0: &[f64]) -> Result<Vec<Vec<f64>>, OracleError> {
        if x0.len() != self.n_in {
            return Err(OracleError::Dimension { expected: self.n_in, got: x0.len() });
        }
        self.widths(reg)?;
        let mut states = vec![x0.to_vec()];
        for node in &self.nodes {
            let next = Self::apply(node, reg, states.last().unwrap())?;
            states.push(next);
        }
        Ok(states)
    }

    pub fn eval(&self, reg: &Registry, x0: &[f64]) -> Result<Vec<f64>, OracleError> {
        Ok(self.forward_states(reg, x0)?.pop().unwrap())
    }
}

/// A state and its tangent.
pub type Dual = (Vec<f64>, Vec<f64>);

/// Forward mode: iterates `⟨x, α⟩ ↦ ⟨g(x), J(g)(x) × α⟩` through the chain.
/// Returns every pair along the way; the last tangent is `J(f)(x₀) × seed`.
pub fn forward_pairs(g: &Graph, reg: &Registry, x0: &[f64], seed: &[f64]) -> Result<Vec<Dual>, OracleError> {
    if seed.len() != x0.len() {
        return Err(OracleError::Dimension { expected: x0.len(), got: seed.len() });
    }
    let states = g.forward_states(reg, x0)?;
    let mut pairs = vec![(x0.to_vec(), seed.to_vec())];
    for (node, s) in g.nodes.iter().zip(&states) {
        let alpha = Graph::node_jacobian(node, reg, s)?.mul_vec(&pairs.last().unwrap().1);
        pairs.push((Graph::apply(node, reg, s)?, alpha));
    }
    Ok(pairs)
}

pub fn forward_mode(g: &Graph, reg: &Registry, x0: &[f64], seed: &[f64]) -> Result<Vec<f64>, OracleError> {
    Ok(forward_pairs(g, reg, x0, seed)?.pop().unwrap().1)
}

/// Pulls the covector `ω(f(x₀))` back node by node. Returns the covectors
/// `βₖ₊₁, βₖ, …, β₁`; the last is the pullback at `x₀`.
pub fn pullback_betas(
    g: &Graph,
    reg: &Registry,
    omega: &dyn Fn(&[f64]) -> Vec<f64>,
    x0: &[f64],
) -> Result<Vec<Vec<f64>>, OracleError> {
    let states = g.forward_states(reg, x0)?;
    let out = states.last().unwrap();
    let beta = omega(out);
    if beta.len() != out.len() {
        return Err(OracleError::Dimension { expected: out.len(), got: beta.len() });
    }
    let mut betas = vec![beta];
    for (node, s) in g.nodes.iter().zip(&states).rev() {
        let next = Graph::node_jacobian(node, reg, s)?.tmul_vec(betas.last().unwrap());
        betas.push(next);
    }
    Ok(betas)
}

/// `Ω(f)(ω)(x₀) = J(f)(x₀)ᵀ ω(f x₀)`.
pub fn pullback_numeric(
    g: &Graph,
    reg: &Registry,
    omega: &dyn Fn(&[f64]) -> Vec<f64>,
    x0: &[f64],
) -> Result<Vec<f64>, OracleError> {
    Ok(pullback_betas(g, reg, omega, x0)?.pop().unwrap())
}

/// Row `p` (from 1) of `J(f)(x₀)`, with the intermediate covectors.
pub fn reverse_mode_betas(g: &Graph, reg: &Registry, x0: &[f64], p: usize) -> Result<Vec<Vec<f64>>, OracleError> {
    let m = g.n_out(reg)?;
    if p == 0 || p > m {
        return Err(OracleError::Row { p, m });
    }
    let basis = move |_: &[f64]| {
        let mut e = vec![0.0; m];
        e[p - 1] = 1.0;
        e
    };
    pullback_betas(g, reg, &basis, x0)
}

pub fn reverse_mode(g: &Graph, reg: &Registry, x0: &[f64], p: usize) -> Result<Vec<f64>, OracleError> {
    Ok(reverse_mode_betas(g, reg, x0, p)?.pop().unwrap())
}

/// Full Jacobian assembled from forward-mode columns.
pub fn jacobian_forward(g: &Graph, reg: &Registry, x0: &[f64]) -> Result<Matrix, OracleError> {
    let m = g.n_out(reg)?;
    let mut j = Matrix::zeros(m, g.n_in);
    for c in 0..g.n_in {
        let mut e = vec![0.0; g.n_in];
        e[c] = 1.0;
        for (r, v) in forward_mode(g, reg, x0, &e)?.into_iter().enumerate() {
            j.set(r, c, v);
        }
    }
    Ok(j)
}

/// Full Jacobian assembled from reverse-mode rows.
pub fn jacobian_reverse(g: &Graph, reg: &Registry, x0: &[f64]) -> Result<Matrix, OracleError> {
    let m = g.n_out(reg)?;
    let mut j = Matrix::zeros(m, g.n_in);
    for r in 0..m {
        for (c, v) in reverse_mode(g, reg, x0, r + 1)?.into_iter().enumerate() {
            j.set(r, c, v);
        }
    }
    Ok(j)
}

/// Central differences, one column per input: `(f(x+heᵢ) − f(x−heᵢ)) / 2h`.
pub fn finite_diff(f: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> Matrix {
    assert!(h > 0.0, "finite difference step must be positive");
    let mut cols = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let mut hi = x.to_vec();
        let mut lo = x.to_vec();
        hi[i] += h;
        lo[i] -= h;
        let (fh, fl) = (f(&hi), f(&lo));
        cols.push(fh.iter().zip(&fl).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<_>>());
    }
    let m = cols.first().map_or(0, |c| c.len());
    let mut j = Matrix::zeros(m, x.len());
    for (c, col) in cols.iter().enumerate() {
        for (r, v) in col.iter().enumerate() {
            j.set(r, c, *v);
        }
    }
    j
}

#[derive(Clone, Debug)]
enum Sym {
    Leaf(usize),
    Pair(Box<Sym>, Box<Sym>),
}

impl Sym {
    fn slots(&self, out: &mut Vec<usize>) {
        match self {
            Sym::Leaf(s) => out.push(*s),
            Sym::Pair(a, b) => {
                a.slots(out);
                b.slots(out);
            }
        }
    }

    fn tuple(slots: impl IntoIterator<Item = usize>) -> Sym {
        let mut it = slots.into_iter().map(Sym::Leaf);
        let first = it.next().expect("empty tuple");
        it.fold(first, |a, b| Sym::Pair(Box::new(a), Box::new(b)))
    }

    fn same_shape(&self, other: &Sym) -> bool {
        match (self, other) {
            (Sym::Leaf(_), Sym::Leaf(_)) => true,
            (Sym::Pair(a, b), Sym::Pair(c, d)) => a.same_shape(c) && b.same_shape(d),
            _ => false,
        }
    }
}

struct Lowering<'r> {
    reg: &'r Registry,
    nodes: Vec<Node>,
    width: usize,
}

impl Lowering<'_> {
    fn push(&mut self, node: Node, added: usize) -> std::ops::Range<usize> {
        self.nodes.push(node);
        let r = self.width..self.width + added;
        self.width += added;
        r
    }

    fn eval(&mut self, t: &Term, env: &HashMap<Name, Sym>) -> Result<Sym, OracleError> {
        let unsupported = || OracleError::Unsupported(t.to_string());
        match t {
            Term::Var(x) => env.get(x).cloned().ok_or_else(unsupported),
            Term::Real(r) => Ok(Sym::Leaf(self.push(Node::Const(*r), 1).start)),
            Term::Pair(a, b) => Ok(Sym::Pair(Box::new(self.eval(a, env)?), Box::new(self.eval(b, env)?))),
            Term::Proj(i, a) => match self.eval(a, env)? {
                Sym::Pair(l, r) => Ok(if *i == 1 { *l } else { *r }),
                Sym::Leaf(_) => Err(unsupported()),
            },
            Term::Prim(f, a) => {
                let mut inputs = Vec::new();
                self.eval(a, env)?.slots(&mut inputs);
                let p = self.reg.get(f)?;
                if p.n_in != inputs.len() {
                    return Err(unsupported());
                }
                Ok(Sym::tuple(self.push(Node::Prim { name: f.clone(), inputs }, p.n_out)))
            }
            Term::Sum(items) => {
                let mut acc = self.eval(&items[0], env)?;
                for item in &items[1..] {
                    let s = self.eval(item, env)?;
                    if !acc.same_shape(&s) {
                        return Err(unsupported());
                    }
                    acc = self.add(&acc, &s);
                }
                Ok(acc)
            }
            Term::App(h, a) => match &**h {
                Term::Lam(b, body) => {
                    let v = self.eval(a, env)?;
                    let mut env = env.clone();
                    env.insert(b.name.clone(), v);
                    self.eval(body, &env)
                }
                _ => Err(unsupported()),
            },
            _ => Err(unsupported()),
        }
    }

    fn add(&mut self, a: &Sym, b: &Sym) -> Sym {
        let (mut lhs, mut rhs) = (Vec::new(), Vec::new());
        a.slots(&mut lhs);
        b.slots(&mut rhs);
        let n = lhs.len();
        let mut range = self.push(Node::Add { lhs, rhs }, n);
        rebuild(a, &mut range)
    }
}

fn rebuild(shape: &Sym, slots: &mut std::ops::Range<usize>) -> Sym {
    match shape {
        Sym::Leaf(_) => Sym::Leaf(slots.next().unwrap()),
        Sym::Pair(a, b) => {
            let l = rebuild(a, slots);
            Sym::Pair(Box::new(l), Box::new(rebuild(b, slots)))
        }
    }
}

/// Lowers a closed first-order function `λx. body` over `Rⁿ` (lets, pairs,
/// projections, primitives, literals and sums) to a graph.
pub fn lower(reg: &Registry, f: &Term, n_in: usize) -> Result<Graph, OracleError> {
    let Term::Lam(b, body) = f else {
        return Err(OracleError::Unsupported(f.to_string()));
    };
    let mut l = Lowering { reg, nodes: Vec::new(), width: n_in };
    let env = HashMap::from([(b.name.clone(), Sym::tuple(0..n_in))]);
    let out = l.eval(body, &env)?;
    let mut slots = Vec::new();
    out.slots(&mut slots);
    l.nodes.push(Node::Select(slots));
    Ok(Graph { n_in, nodes: l.nodes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::encode_vector;

    fn reg() -> &'static Registry {
        Registry::builtin()
    }

    #[test]
    fn forward_mode_first_column() {
        let pairs = forward_pairs(&Graph::running(), reg(), &[1.0, 3.0], &[1.0, 0.0]).unwrap();
        let expected = [
            (vec![1.0, 3.0], vec![1.0, 0.0]),
            (vec![2.0, 11.0], vec![1.0, 2.0]),
            (vec![22.0], vec![15.0]),
            (vec![484.0], vec![660.0]),
        ];
        assert_eq!(pairs, expected);
        assert_eq!(forward_mode(&Graph::running(), reg(), &[1.0, 3.0], &[0.0, 0.0]).unwrap(), vec![0.0]);
        assert_eq!(forward_mode(&Graph::identity(2), reg(), &[1.0, 3.0], &[4.0, 5.0]).unwrap(), vec![4.0, 5.0]);
    }

    #[test]
    fn reverse_mode_row_and_covectors() {
        let betas = reverse_mode_betas(&Graph::running(), reg(), &[1.0, 3.0], 1).unwrap();
        assert_eq!(betas, vec![vec![1.0], vec![44.0], vec![484.0, 88.0], vec![660.0, 528.0]]);
        assert_eq!(reverse_mode(&Graph::identity(3), reg(), &[1.0, 2.0, 3.0], 2).unwrap(), vec![0.0, 1.0, 0.0]);
        assert!(matches!(reverse_mode(&Graph::running(), reg(), &[1.0, 3.0], 2), Err(OracleError::Row { .. })));
    }

    #[test]
    fn pullback_of_forms() {
        let g = Graph::running();
        let one = |_: &[f64]| vec![1.0];
        assert_eq!(pullback_numeric(&g, reg(), &one, &[1.0, 3.0]).unwrap(), vec![660.0, 528.0]);
        let zero = |_: &[f64]| vec![0.0];
        assert_eq!(pullback_numeric(&g, reg(), &zero, &[1.0, 3.0]).unwrap(), vec![0.0, 0.0]);
        let single = Graph { n_in: 2, nodes: vec![Node::Map("mult".into())] };
        let w = |_: &[f64]| vec![3.0];
        assert_eq!(pullback_numeric(&single, reg(), &w, &[2.0, 5.0]).unwrap(), reg().vjp("mult", &[3.0], &[2.0, 5.0]).unwrap());
    }

    #[test]
    fn finite_differences() {
        let pow2 = |x: &[f64]| vec![x[0] * x[0]];
        assert!((finite_diff(&pow2, &[22.0], 1e-5).get(0, 0) - 44.0).abs() < 1e-3);
        let lin = |x: &[f64]| vec![2.0 * x[0] - x[1]];
        let j = finite_diff(&lin, &[1.0, 1.0], 1e-3);
        assert!((j.get(0, 0) - 2.0).abs() < 1e-9 && (j.get(0, 1) + 1.0).abs() < 1e-9);
        let g = Graph::running();
        let f = |x: &[f64]| g.eval(reg(), x).unwrap();
        let j = finite_diff(&f, &[1.0, 3.0], 1e-5);
        assert!((j.get(0, 0) - 660.0).abs() < 660.0 * 1e-4);
        assert!((j.get(0, 1) - 528.0).abs() < 528.0 * 1e-4);
    }

    #[test]
    fn lowering_the_running_body() {
        let p = Name::new("p");
        let body = Term::prim(
            "pow2",
            Term::prim("mult", Term::prim("g", Term::pair(Term::proj(1, Term::Var(p.clone())), Term::proj(2, Term::Var(p.clone()))))),
        );
        let g = lower(reg(), &Term::Lam(crate::syntax::Binder::new(p), Box::new(body)), 2).unwrap();
        assert_eq!(g.eval(reg(), &[1.0, 3.0]).unwrap(), vec![484.0]);
        assert_eq!(reverse_mode(&g, reg(), &[1.0, 3.0], 1).unwrap(), vec![660.0, 528.0]);
    }

    #[test]
    fn lowering_sums_and_constants() {
        // λp. ⟨π₁ p + sin(π₂ p), 2⟩
        let p = Term::var("p");
        let body = Term::pair(Term::sum(vec![Term::proj(1, p.clone()), Term::prim("sin", Term::proj(2, p))]), Term::Real(2.0));
        let g = lower(reg(), &Term::lam("p", body), 2).unwrap();
        assert_eq!(g.eval(reg(), &[1.0, 0.0]).unwrap(), vec![1.0, 2.0]);
        let j = jacobian_reverse(&g, reg(), &[1.0, 0.0]).unwrap();
        assert_eq!(j, jacobian_forward(&g, reg(), &[1.0, 0.0]).unwrap());
        assert_eq!(j.data, vec![1.0, 1.0, 0.0, 0.0]);
        assert!(lower(reg(), &Term::lam("p", Term::app(Term::var("k"), encode_vector(&[1.0]))), 1).is_err());
    }

    #[test]
    fn wiring_errors() {
        let g = Graph { n_in: 1, nodes: vec![Node::Select(vec![3])] };
        assert!(matches!(g.eval(reg(), &[1.0]), Err(OracleError::Wiring { .. })));
        assert!(matches!(Graph::running().eval(reg(), &[1.0]), Err(OracleError::Dimension { .. })));
    }
}
