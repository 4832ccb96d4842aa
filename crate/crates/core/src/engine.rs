//! Call-by-value small-step reduction. Each step finds the unique redex
//! of the term (innermost-leftmost along evaluation contexts) and contracts
//! it with one of the standard rules (1)–(6), the pullback rules (7)–(20),
//! an administrative normalization of a pullback body, or a sum/zero law.
//!
//! Rules with a premise run the premise as a nested normalization that
//! shares the fuel budget and the fresh-name supply of the outer run.

use std::collections::VecDeque;
use std::fmt;

use thiserror::Error;

use crate::anf::{a_normalize, is_elementary, is_let_series, AnfError, LetSeries};
use crate::prims::{PrimError, Registry};
use crate::syntax::{
    apply_path, atom_root, basis_dual, decode_canonical, encode_vector, free_vars, normalize_sum,
    normalize_sum_shallow, occurs_free, substitute, Binder, Gensym, Name, SyntaxError, Term, Ty,
};
use crate::types::{self, TypeError, TypingEnv};

/// Default step budget.
pub const DEFAULT_FUEL: u64 = 1_000_000;

const FUEL_TAIL: usize = 20;

/// Reduction rules, identified as in the trace output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rule {
    Beta,
    ProjPair,
    PrimLit,
    JacApply,
    DualJac,
    DualCompose,
    LetLast,
    LetSplit,
    Const,
    LinSumFree,
    LinSumPaths,
    LinVar,
    LinProj,
    PairLeft,
    PairRight,
    PairBoth,
    JacProj,
    FunSym,
    DualConst,
    DualBody,
    DualBoth,
    PullbackBody,
    Abstraction,
    AppFree,
    AppFun,
    AppConst,
    Frame,
    FrameConst,
    Admin,
    SumLaw,
    ZeroLaw,
}

impl Rule {
    pub fn id(self) -> &'static str {
        use Rule::*;
        match self {
            Beta => "1",
            ProjPair => "2",
            PrimLit => "3",
            JacApply => "4",
            DualJac => "5",
            DualCompose => "6",
            LetLast => "7",
            LetSplit => "8",
            Const => "9",
            LinSumFree => "10a",
            LinSumPaths => "10b",
            LinVar => "11",
            LinProj => "12",
            PairLeft => "13a",
            PairRight => "13b",
            PairBoth => "13c",
            JacProj => "14",
            FunSym => "15",
            DualConst => "16a",
            DualBody => "16b",
            DualBoth => "16c",
            PullbackBody => "17",
            Abstraction => "18",
            AppFree => "19a",
            AppFun => "19b",
            AppConst => "19c",
            Frame => "20a",
            FrameConst => "20b",
            Admin => "A",
            SumLaw => "sum",
            ZeroLaw => "zero",
        }
    }

    /// Rules (9)–(20): a pullback applied to a value.
    pub fn is_pullback_application(self) -> bool {
        !matches!(
            self,
            Rule::Beta
                | Rule::ProjPair
                | Rule::PrimLit
                | Rule::JacApply
                | Rule::DualJac
                | Rule::DualCompose
                | Rule::LetLast
                | Rule::LetSplit
                | Rule::Admin
                | Rule::SumLaw
                | Rule::ZeroLaw
        )
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// Display-only tag: steps before the first dual-map contraction belong to
/// the forward phase, the rest to the reverse phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Forward,
    Reverse,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Forward => "forward",
            Phase::Reverse => "reverse",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceEntry {
    pub step: u64,
    pub rule: Rule,
    /// Nesting level: 0 for the main reduction, higher inside premises.
    pub depth: usize,
    pub phase: Phase,
    pub redex: String,
    pub result: String,
}

impl fmt::Display for TraceEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:>5} {:indent$}({}) {}  ⟶  {}",
            self.step,
            "",
            self.rule,
            self.redex,
            self.result,
            indent = 2 * self.depth
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub entries: Vec<TraceEntry>,
    /// Stuck values met along the way, each reported once.
    pub notes: Vec<String>,
}

impl Trace {
    /// The steps of the main reduction, without premise sub-derivations.
    pub fn main_steps(&self) -> impl Iterator<Item = &TraceEntry> {
        self.entries.iter().filter(|e| e.depth == 0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("fuel exhausted after {limit} steps")]
    Fuel { limit: u64, last: Vec<TraceEntry> },
    #[error("premise of rule ({rule}) ended in `{result}`, not a dual map")]
    StuckPremise { rule: Rule, result: String },
    #[error("normal form `{0}` is not a dual vector")]
    HigherOrderResult(String),
    #[error("expected a point of dimension {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Prim(#[from] PrimError),
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
}

/// Result of [`Engine::decompose`].
#[derive(Clone, Debug, PartialEq)]
pub enum Decomposition {
    /// The term is a value.
    Value,
    Redex {
        /// Child indices from the root to the redex, in [`crate::syntax::children`] order.
        path: Vec<usize>,
        rule: Rule,
        redex: Term,
        contractum: Term,
    },
}

/// A value with the reduction that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalized {
    pub value: Term,
    pub trace: Trace,
    /// Fuel consumed, premises and administrative steps included.
    pub fuel_used: u64,
}

/// The reducer. Cheap to copy; holds only configuration.
#[derive(Clone, Copy, Debug)]
pub struct Engine<'r> {
    reg: &'r Registry,
    fuel: u64,
    record: bool,
}

impl<'r> Engine<'r> {
    pub fn new(reg: &'r Registry) -> Self {
        Engine { reg, fuel: DEFAULT_FUEL, record: true }
    }

    pub fn with_fuel(mut self, fuel: u64) -> Self {
        self.fuel = fuel;
        self
    }

    /// Turns trace recording on or off. Off saves printing every redex.
    pub fn recording(mut self, on: bool) -> Self {
        self.record = on;
        self
    }

    pub fn registry(&self) -> &'r Registry {
        self.reg
    }

    fn run(&self, t: &Term) -> Run<'r, '_> {
        Run {
            reg: self.reg,
            gensym: Gensym::above(t),
            limit: self.fuel,
            used: 0,
            record: self.record,
            entries: Vec::new(),
            tail: VecDeque::new(),
            notes: Vec::new(),
            phase: Phase::Forward,
            stuck: Vec::new(),
            observer: None,
        }
    }

    pub fn normalize(&self, t: &Term) -> Result<Normalized, EngineError> {
        let mut run = self.run(t);
        let value = run.reduce(normalize_sum(t), 0)?;
        Ok(run.finish(value))
    }

    /// Like [`Engine::normalize`], calling `observe` with the whole term
    /// after every step of the main reduction.
    pub fn normalize_observed(
        &self,
        t: &Term,
        observe: &mut dyn FnMut(&Term),
    ) -> Result<Normalized, EngineError> {
        let mut run = self.run(t);
        run.observer = Some(observe);
        let value = run.reduce(normalize_sum(t), 0)?;
        Ok(run.finish(value))
    }

    /// The unique redex of `t` and its contractum, or `Value`.
    pub fn decompose(&self, t: &Term) -> Result<Decomposition, EngineError> {
        let mut run = self.run(t);
        let mut path = Vec::new();
        Ok(match run.find(t, &mut path)? {
            None => Decomposition::Value,
            Some((rule, contractum)) => {
                let redex = subterm(t, &path).clone();
                Decomposition::Redex { path, rule, redex, contractum }
            }
        })
    }

    /// One reduction step, or `None` for a value.
    pub fn step(&self, t: &Term) -> Result<Option<Term>, EngineError> {
        Ok(match self.decompose(t)? {
            Decomposition::Value => None,
            Decomposition::Redex { path, contractum, .. } => Some(plug(t.clone(), &path, contractum)),
        })
    }

    /// Row `p` (from 1) of the Jacobian of `f : Rⁿ ⇒ Rᵐ` at `x`, computed by
    /// normalizing `(pb f (pbof eₚ)) x`.
    pub fn grad(&self, f: &Term, x: &[f64], p: usize) -> Result<Vec<f64>, EngineError> {
        let point = encode_vector(x);
        let m = self.output_dim(f, x)?;
        let n = x.len();
        let omega = basis_dual(p, m)?;
        let pb = match f {
            Term::Lam(b, body) => Term::Pullback(b.clone(), body.clone(), Box::new(omega)),
            _ => {
                let y = Gensym::above(f).fresh("y");
                Term::Pullback(Binder::new(y.clone()), Box::new(Term::app(f.clone(), Term::Var(y))), Box::new(omega))
            }
        };
        let value = self.normalize(&Term::app(pb, point))?.value;
        match value {
            Term::DualVec(c) if c.len() == n => Ok(c),
            Term::Zero(_) => Ok(vec![0.0; n]),
            other => Err(EngineError::HigherOrderResult(other.to_string())),
        }
    }

    /// Number of scalars returned by `f` at `x`.
    pub fn output_dim(&self, f: &Term, x: &[f64]) -> Result<usize, EngineError> {
        let out = types::infer(&TypingEnv::new(), self.reg, &Term::app(f.clone(), encode_vector(x)))?;
        out.flat_dim().ok_or_else(|| EngineError::HigherOrderResult(format!("{f} : {out}")))
    }
}

/// Normalizes with the built-in primitives.
pub fn normalize(t: &Term, fuel: u64) -> Result<Normalized, EngineError> {
    Engine::new(Registry::builtin()).with_fuel(fuel).normalize(t)
}

/// The subterm at `path`.
pub fn subterm<'t>(t: &'t Term, path: &[usize]) -> &'t Term {
    path.iter().fold(t, |cur, &i| crate::syntax::children(cur)[i])
}

fn child_mut(t: &mut Term, i: usize) -> &mut Term {
    match t {
        Term::Lam(_, b) | Term::Proj(_, b) | Term::Prim(_, b) | Term::Jac(_, b) => b,
        Term::App(a, b) | Term::Pair(a, b) | Term::DualMap(_, a, b) | Term::Pullback(_, a, b) => {
            if i == 0 {
                a
            } else {
                b
            }
        }
        Term::Sum(items) => &mut items[i],
        _ => unreachable!("leaf has no children"),
    }
}

/// Replaces the subterm at `path`, renormalizing the sums along the way.
pub fn plug(mut t: Term, path: &[usize], replacement: Term) -> Term {
    fn go(t: &mut Term, path: &[usize], replacement: Term) {
        match path.split_first() {
            None => *t = replacement,
            Some((&i, rest)) => {
                go(child_mut(t, i), rest, replacement);
                if matches!(t, Term::Sum(_)) {
                    let owned = std::mem::replace(t, Term::zero());
                    *t = normalize_sum_shallow(owned);
                }
            }
        }
    }
    go(&mut t, path, normalize_sum(&replacement));
    t
}

/// The first-order type of a literal value.
pub fn value_shape(t: &Term) -> Option<Ty> {
    match t {
        Term::Real(_) => Some(Ty::Real),
        Term::Pair(a, b) => Some(Ty::prod(value_shape(a)?, value_shape(b)?)),
        _ => None,
    }
}

/// Projects a value along a path (innermost first) without reducing.
fn project_value<'t>(v: &'t Term, path: &[u8]) -> Option<&'t Term> {
    let mut cur = v;
    for &i in path {
        match cur {
            Term::Pair(a, b) => cur = if i == 1 { a } else { b },
            _ => return None,
        }
    }
    Some(cur)
}

/// Offset and width of the component of `layout` selected by `path`.
fn slot(layout: &Ty, path: &[u8]) -> Option<(usize, usize)> {
    let mut off = 0;
    let mut ty = layout;
    for &i in path {
        match ty {
            Ty::Prod(a, b) => {
                if i == 1 {
                    ty = a;
                } else {
                    off += a.flat_dim()?;
                    ty = b;
                }
            }
            _ => return None,
        }
    }
    Some((off, ty.flat_dim()?))
}

type Found = Option<(Rule, Term)>;

enum Premise {
    Zero,
    Map(Binder, Term),
    Stuck,
}

struct Run<'r, 'o> {
    reg: &'r Registry,
    gensym: Gensym,
    limit: u64,
    used: u64,
    record: bool,
    entries: Vec<TraceEntry>,
    tail: VecDeque<TraceEntry>,
    notes: Vec<String>,
    phase: Phase,
    /// Pullback applications already found to be stuck values.
    stuck: Vec<Term>,
    observer: Option<&'o mut dyn FnMut(&Term)>,
}

impl<'r, 'o> Run<'r, 'o> {
    fn finish(self, value: Term) -> Normalized {
        Normalized {
            value,
            trace: Trace { entries: self.entries, notes: self.notes },
            fuel_used: self.used,
        }
    }

    fn charge(&mut self, n: u64) -> Result<(), EngineError> {
        self.used += n;
        if self.used > self.limit {
            return Err(EngineError::Fuel { limit: self.limit, last: self.tail.iter().cloned().collect() });
        }
        Ok(())
    }

    fn note(&mut self, msg: String) {
        if !self.notes.contains(&msg) {
            self.notes.push(msg);
        }
    }

    fn reduce(&mut self, mut t: Term, depth: usize) -> Result<Term, EngineError> {
        loop {
            let mut path = Vec::new();
            let Some((rule, contractum)) = self.find(&t, &mut path)? else {
                return Ok(t);
            };
            if rule != Rule::Admin {
                self.charge(1)?;
            }
            if matches!(rule, Rule::DualJac | Rule::DualCompose) && depth == 0 {
                self.phase = Phase::Reverse;
            }
            if self.record {
                let entry = TraceEntry {
                    step: self.used,
                    rule,
                    depth,
                    phase: self.phase,
                    redex: subterm(&t, &path).to_string(),
                    result: contractum.to_string(),
                };
                if self.tail.len() == FUEL_TAIL {
                    self.tail.pop_front();
                }
                self.tail.push_back(entry.clone());
                self.entries.push(entry);
            }
            t = plug(t, &path, contractum);
            if depth == 0 {
                if let Some(obs) = self.observer.as_mut() {
                    obs(&t);
                }
            }
        }
    }

    fn fresh_binder(&mut self, base: &str, ty: Option<Ty>) -> Binder {
        Binder { name: self.gensym.fresh(base), ty }
    }

    /// Finds the redex of `t`, extending `path` to it.
    fn find(&mut self, t: &Term, path: &mut Vec<usize>) -> Result<Found, EngineError> {
        macro_rules! visit {
            ($i:expr, $c:expr) => {{
                path.push($i);
                if let Some(r) = self.find($c, path)? {
                    return Ok(Some(r));
                }
                path.pop();
            }};
        }
        match t {
            Term::Var(_) | Term::Real(_) | Term::DualVec(_) | Term::Zero(_) | Term::Lam(..) => Ok(None),
            Term::Sum(items) => {
                for (i, s) in items.iter().enumerate() {
                    visit!(i, s);
                }
                Ok(fold_sum(items).map(|r| (Rule::SumLaw, r)))
            }
            Term::Pair(a, b) => {
                visit!(0, a);
                visit!(1, b);
                Ok(None)
            }
            Term::Proj(i, a) => {
                visit!(0, a);
                Ok(match &**a {
                    Term::Pair(l, r) => Some((Rule::ProjPair, if *i == 1 { (**l).clone() } else { (**r).clone() })),
                    Term::Sum(items) => {
                        Some((Rule::SumLaw, Term::Sum(items.iter().map(|s| Term::proj(*i, s.clone())).collect())))
                    }
                    Term::Zero(_) => Some((Rule::ZeroLaw, Term::zero())),
                    _ => None,
                })
            }
            Term::Prim(f, a) => {
                visit!(0, a);
                let p = self.reg.get(f)?;
                Ok(decode_canonical(a, p.n_in).map(|x| (Rule::PrimLit, encode_vector(&p.eval(&x)))))
            }
            Term::Jac(_, a) => {
                visit!(0, a);
                Ok(a.is_zero().then(|| (Rule::ZeroLaw, Term::zero())))
            }
            Term::App(f, a) => {
                visit!(0, f);
                visit!(1, a);
                self.app_redex(t, f, a)
            }
            Term::DualMap(b, s, c) => {
                visit!(1, c);
                if c.is_zero() {
                    return Ok(Some((Rule::ZeroLaw, Term::zero())));
                }
                visit!(0, s);
                self.dual_redex(b, s, c)
            }
            Term::Pullback(b, body, om) => {
                if !ready(&b.name, body) {
                    let (ls, steps) = a_normalize(body, &mut self.gensym, self.limit.saturating_sub(self.used))
                        .map_err(|AnfError::Fuel(_)| EngineError::Fuel {
                            limit: self.limit,
                            last: self.tail.iter().cloned().collect(),
                        })?;
                    self.charge(steps.max(1))?;
                    return Ok(Some((Rule::Admin, Term::Pullback(b.clone(), Box::new(ls.to_term()), om.clone()))));
                }
                if let Some(ls) = LetSeries::from_term(body) {
                    return Ok(Some(self.split(b, ls, om)));
                }
                visit!(1, om);
                Ok(None)
            }
        }
    }

    /// Rules (7) and (8).
    fn split(&mut self, y: &Binder, ls: LetSeries, om: &Term) -> (Rule, Term) {
        let mut bindings = ls.bindings.into_iter();
        let (x, e) = bindings.next().expect("let series is non-empty");
        if bindings.len() == 0 {
            return (Rule::LetLast, Term::Pullback(y.clone(), Box::new(e), Box::new(om.clone())));
        }
        let rest = LetSeries { bindings: bindings.collect(), result: ls.result }.to_term();
        let w = self.gensym.fresh("w");
        let rest = substitute(&rest, &Term::proj(2, Term::Var(w.clone())), &x.name);
        let rest = substitute(&rest, &Term::proj(1, Term::Var(w.clone())), &y.name);
        let inner = Term::Pullback(Binder::new(w), Box::new(rest), Box::new(om.clone()));
        let frame = Term::pair(Term::Var(y.name.clone()), e);
        (Rule::LetSplit, Term::Pullback(y.clone(), Box::new(frame), Box::new(inner)))
    }

    fn app_redex(&mut self, t: &Term, f: &Term, a: &Term) -> Result<Found, EngineError> {
        Ok(match f {
            Term::Lam(b, s) => Some((Rule::Beta, substitute(s, a, &b.name))),
            Term::Sum(fs) => Some((Rule::SumLaw, Term::Sum(fs.iter().map(|g| Term::app(g.clone(), a.clone())).collect()))),
            Term::Zero(_) => Some((Rule::ZeroLaw, Term::zero())),
            Term::Jac(g, r) => {
                let p = self.reg.get(g)?;
                match (decode_canonical(r, p.n_in), decode_canonical(a, p.n_in)) {
                    (Some(tangent), Some(point)) => {
                        Some((Rule::JacApply, encode_vector(&self.reg.jvp(g, &tangent, &point)?)))
                    }
                    _ => None,
                }
            }
            Term::Pullback(y, body, om) => {
                if self.stuck.contains(t) {
                    return Ok(None);
                }
                let found = self.pullback_apply(y, body, om, a)?;
                if found.is_none() {
                    self.stuck.push(t.clone());
                    self.note(format!("stuck-value: {t}"));
                }
                found
            }
            _ => None,
        })
    }

    fn dual_redex(&mut self, b: &Binder, s: &Term, c: &Term) -> Result<Found, EngineError> {
        if s.is_zero() {
            return Ok(Some((Rule::ZeroLaw, Term::zero())));
        }
        Ok(match c {
            Term::DualVec(cot) => self.transpose(b, s, cot)?.map(|r| (Rule::DualJac, Term::DualVec(r))),
            Term::DualMap(b2, s2, c3) => {
                let body = substitute(s2, s, &b2.name);
                Some((Rule::DualCompose, Term::DualMap(b.clone(), Box::new(body), c3.clone())))
            }
            Term::Sum(cs) => Some((
                Rule::SumLaw,
                Term::Sum(cs.iter().map(|ci| Term::DualMap(b.clone(), Box::new(s.clone()), Box::new(ci.clone()))).collect()),
            )),
            _ => None,
        })
    }

    /// Rule (5), generalized to any body built from the binder by pairs,
    /// projections, sums, zeros and Jacobians at literal points: the
    /// covector is pushed back through the body to the binder's space.
    fn transpose(&self, v: &Binder, s: &Term, cot: &[f64]) -> Result<Option<Vec<f64>>, EngineError> {
        let layout = match &v.ty {
            Some(t) => Some(t.clone()),
            None => self.jac_layout(&v.name, s),
        };
        let Some(layout) = layout else { return Ok(None) };
        let Some(n) = layout.flat_dim() else { return Ok(None) };
        let mut out = vec![0.0; n];
        Ok(self.adjoint(&v.name, &layout, s, cot, &mut out)?.then_some(out))
    }

    /// Layout of an unannotated binder used directly as a Jacobian tangent.
    fn jac_layout(&self, v: &Name, s: &Term) -> Option<Ty> {
        match s {
            Term::Jac(f, t) if matches!(&**t, Term::Var(x) if x == v) => self.reg.get(f).ok().map(|p| Ty::rn(p.n_in)),
            _ => crate::syntax::children(s).into_iter().find_map(|c| self.jac_layout(v, c)),
        }
    }

    fn width(&self, v: &Name, layout: &Ty, s: &Term) -> Option<usize> {
        match s {
            Term::Pair(a, b) => Some(self.width(v, layout, a)? + self.width(v, layout, b)?),
            Term::Sum(items) => items.iter().find_map(|i| self.width(v, layout, i)),
            Term::App(f, _) => match &**f {
                Term::Jac(g, _) => self.reg.get(g).ok().map(|p| p.n_out),
                _ => None,
            },
            _ => match atom_root(s) {
                Some((x, path)) if x == v => slot(layout, &path).map(|(_, w)| w),
                _ => None,
            },
        }
    }

    fn adjoint(&self, v: &Name, layout: &Ty, s: &Term, cot: &[f64], out: &mut [f64]) -> Result<bool, EngineError> {
        match s {
            Term::Zero(_) => Ok(true),
            Term::Sum(items) => {
                for i in items {
                    if !self.adjoint(v, layout, i, cot, out)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            Term::Pair(a, b) => {
                let (wa, wb) = match (self.width(v, layout, a), self.width(v, layout, b)) {
                    (Some(x), Some(y)) => (x, y),
                    (Some(x), None) if x <= cot.len() => (x, cot.len() - x),
                    (None, Some(y)) if y <= cot.len() => (cot.len() - y, y),
                    _ => return Ok(a.is_zero() && b.is_zero()),
                };
                if wa + wb != cot.len() {
                    return Ok(false);
                }
                Ok(self.adjoint(v, layout, a, &cot[..wa], out)? && self.adjoint(v, layout, b, &cot[wa..], out)?)
            }
            Term::App(f, pt) => {
                let Term::Jac(g, tangent) = &**f else { return Ok(false) };
                let p = self.reg.get(g)?;
                let Some(point) = decode_canonical(pt, p.n_in) else { return Ok(false) };
                if cot.len() != p.n_out {
                    return Ok(false);
                }
                let back = self.reg.vjp(g, cot, &point)?;
                self.adjoint(v, layout, tangent, &back, out)
            }
            _ => match atom_root(s) {
                Some((x, path)) if x == v => match slot(layout, &path) {
                    Some((off, w)) if w == cot.len() => {
                        for (o, c) in out[off..off + w].iter_mut().zip(cot) {
                            *o += c;
                        }
                        Ok(true)
                    }
                    _ => Ok(false),
                },
                _ => Ok(false),
            },
        }
    }

    /// Runs `(pb λy.body ω) arg` to a value and reads off the body of the
    /// resulting dual map, whose covector must be headed by `omega`.
    fn premise(&mut self, rule: Rule, y: &Binder, body: Term, arg: Term, omega: Term) -> Result<Premise, EngineError> {
        let t = Term::app(Term::Pullback(y.clone(), Box::new(body), Box::new(omega.clone())), arg);
        let depth = 1;
        let nf = self.reduce_nested(t, depth)?;
        Ok(match nf {
            Term::Zero(_) => Premise::Zero,
            Term::DualMap(v, s, cov) => match &*cov {
                Term::App(h, _) if **h == omega => Premise::Map(v, *s),
                _ => {
                    self.note(format!("stuck premise of ({rule}): {}", Term::DualMap(v, s, cov.clone())));
                    Premise::Stuck
                }
            },
            Term::App(ref h, _) if matches!(**h, Term::Pullback(..)) => Premise::Stuck,
            other => return Err(EngineError::StuckPremise { rule, result: other.to_string() }),
        })
    }

    fn reduce_nested(&mut self, t: Term, depth: usize) -> Result<Term, EngineError> {
        let phase = self.phase;
        let r = self.reduce(normalize_sum(&t), depth);
        self.phase = phase;
        r
    }

    fn fresh_omega(&mut self) -> Term {
        Term::Var(self.gensym.fresh("ω"))
    }

    /// Renames `x` when it would capture a free variable of `v`.
    fn freshen(&mut self, x: &Binder, body: &Term, v: &Term) -> (Binder, Term) {
        if free_vars(v).contains(&x.name) {
            let n = self.gensym.fresh(x.name.base());
            let body = substitute(body, &Term::Var(n.clone()), &x.name);
            (Binder { name: n, ty: x.ty.clone() }, body)
        } else {
            (x.clone(), body.clone())
        }
    }

    /// Rules (9)–(20) for `(pb λy.body ω) V`.
    fn pullback_apply(&mut self, y: &Binder, body: &Term, om: &Term, val: &Term) -> Result<Found, EngineError> {
        let yn = &y.name;
        let at = |e: Term| Term::app(om.clone(), e);
        let dual = |v: Binder, s: Term, c: Term| Term::DualMap(v, Box::new(s), Box::new(c));
        let ypath = |t: &Term| atom_root(t).filter(|(n, _)| *n == yn).map(|(_, p)| p);

        if let Term::Pair(l, e) = body {
            if matches!(&**l, Term::Var(n) if n == yn) && is_elementary(e) {
                if !occurs_free(yn, e) {
                    let v = self.fresh_binder("v", value_shape(val));
                    let s = Term::pair(Term::Var(v.name.clone()), Term::zero());
                    let c = at(Term::pair(val.clone(), (**e).clone()));
                    return Ok(Some((Rule::FrameConst, dual(v, s, c))));
                }
                let w = self.fresh_omega();
                let (v, s) = match self.premise(Rule::Frame, y, (**e).clone(), val.clone(), w)? {
                    Premise::Map(v, s) => (v, s),
                    Premise::Zero => (self.fresh_binder("v", value_shape(val)), Term::zero()),
                    Premise::Stuck => return Ok(None),
                };
                let s = Term::pair(Term::Var(v.name.clone()), s);
                let c = at(Term::pair(val.clone(), substitute(e, val, yn)));
                return Ok(Some((Rule::Frame, dual(v, s, c))));
            }
        }
        debug_assert!(is_elementary(body), "pullback applied before its body was normalized");
        if !occurs_free(yn, body) {
            return Ok(Some((Rule::Const, Term::zero())));
        }
        let v = self.fresh_binder("v", value_shape(val));
        let vv = Term::Var(v.name.clone());
        let on_v = |p: &[u8]| apply_path(vv.clone(), p);
        let on_val = |p: &[u8]| apply_path(val.clone(), p);

        if let Some(p) = ypath(body) {
            let (rule, s, e) = if p.is_empty() {
                (Rule::LinVar, vv.clone(), val.clone())
            } else {
                (Rule::LinProj, on_v(&p), on_val(&p))
            };
            return Ok(Some((rule, dual(v, s, at(e)))));
        }

        Ok(Some(match body {
            Term::Sum(items) => {
                let (a, b) = (&items[0], &items[1]);
                let (rule, s, e) = match (ypath(a), ypath(b)) {
                    (Some(pa), Some(pb)) => (
                        Rule::LinSumPaths,
                        Term::Sum(vec![on_v(&pa), on_v(&pb)]),
                        Term::Sum(vec![on_val(&pa), on_val(&pb)]),
                    ),
                    (Some(pa), None) => (Rule::LinSumFree, on_v(&pa), Term::Sum(vec![on_val(&pa), b.clone()])),
                    (None, Some(pb)) => (Rule::LinSumFree, on_v(&pb), Term::Sum(vec![a.clone(), on_val(&pb)])),
                    (None, None) => unreachable!("y occurs free"),
                };
                (rule, dual(v, s, at(e)))
            }
            Term::Pair(a, b) => {
                let (rule, s, e) = match (ypath(a), ypath(b)) {
                    (Some(pa), Some(pb)) => (
                        Rule::PairBoth,
                        Term::pair(on_v(&pa), on_v(&pb)),
                        Term::pair(on_val(&pa), on_val(&pb)),
                    ),
                    (Some(pa), None) => {
                        (Rule::PairLeft, Term::pair(on_v(&pa), Term::zero()), Term::pair(on_val(&pa), (**b).clone()))
                    }
                    (None, Some(pb)) => {
                        (Rule::PairRight, Term::pair(Term::zero(), on_v(&pb)), Term::pair((**a).clone(), on_val(&pb)))
                    }
                    (None, None) => unreachable!("y occurs free"),
                };
                (rule, dual(v, s, at(e)))
            }
            Term::Jac(f, a) => {
                let p = ypath(a).expect("y occurs free");
                (Rule::JacProj, dual(v, Term::Jac(f.clone(), Box::new(on_v(&p))), at(Term::Jac(f.clone(), Box::new(on_val(&p))))))
            }
            Term::Prim(f, a) => {
                let p = ypath(a).expect("y occurs free");
                let s = Term::app(Term::Jac(f.clone(), Box::new(on_v(&p))), on_val(&p));
                (Rule::FunSym, dual(v, s, at(Term::Prim(f.clone(), Box::new(on_val(&p))))))
            }
            Term::DualMap(x, l, z) => {
                let (x, l) = self.freshen(x, l, val);
                let in_body = x.name != *yn && occurs_free(yn, &l);
                let dm = |l: Term, z: Term| Term::DualMap(x.clone(), Box::new(l), Box::new(z));
                match ypath(z) {
                    Some(p) if !in_body => {
                        (Rule::DualConst, dual(v, dm(l.clone(), on_v(&p)), at(dm(l, on_val(&p)))))
                    }
                    None => {
                        let w = self.fresh_omega();
                        let (v, s) = match self.premise(Rule::DualBody, y, l.clone(), val.clone(), w)? {
                            Premise::Map(pv, s) => (pv, s),
                            Premise::Zero => (v, Term::zero()),
                            Premise::Stuck => return Ok(None),
                        };
                        let lv = substitute(&l, val, yn);
                        (Rule::DualBody, dual(v, dm(s, (**z).clone()), at(dm(lv, (**z).clone()))))
                    }
                    Some(p) => {
                        let w = self.fresh_omega();
                        let (v, s) = match self.premise(Rule::DualBoth, y, l.clone(), val.clone(), w)? {
                            Premise::Map(pv, s) => (pv, s),
                            Premise::Zero => (v, Term::zero()),
                            Premise::Stuck => return Ok(None),
                        };
                        let lv = substitute(&l, val, yn);
                        let vz = apply_path(Term::Var(v.name.clone()), &p);
                        let s = Term::Sum(vec![dm(lv.clone(), vz), dm(s, on_val(&p))]);
                        (Rule::DualBoth, dual(v, s, at(dm(lv, on_val(&p)))))
                    }
                }
            }
            Term::Pullback(x, l, z) => {
                let a = self.gensym.fresh("a");
                let av = Term::Var(a.clone());
                let inner = match self.premise(Rule::PullbackBody, x, (**l).clone(), av.clone(), (**z).clone())? {
                    Premise::Map(pv, s) => {
                        let cov = Term::app((**z).clone(), substitute(l, &av, &x.name));
                        Term::DualMap(pv, Box::new(s), Box::new(cov))
                    }
                    Premise::Zero => Term::zero(),
                    Premise::Stuck => return Ok(None),
                };
                let body = Term::Lam(Binder::new(a), Box::new(inner));
                let pb = Term::Pullback(y.clone(), Box::new(body), Box::new(om.clone()));
                (Rule::PullbackBody, Term::app(pb, val.clone()))
            }
            Term::Lam(x, l) => {
                let (x, l) = self.freshen(x, l, val);
                let w = self.fresh_omega();
                let (v, s) = match self.premise(Rule::Abstraction, y, l.clone(), val.clone(), w)? {
                    Premise::Map(pv, s) => (pv, s),
                    Premise::Zero => (v, Term::zero()),
                    Premise::Stuck => return Ok(None),
                };
                let lv = Term::Lam(x.clone(), Box::new(substitute(&l, val, yn)));
                (Rule::Abstraction, dual(v, Term::Lam(x, Box::new(s)), at(lv)))
            }
            Term::App(a, b) => match (ypath(a), ypath(b)) {
                (Some(pa), None) => {
                    let s = Term::app(on_v(&pa), (**b).clone());
                    (Rule::AppFree, dual(v, s, at(Term::app(on_val(&pa), (**b).clone()))))
                }
                (Some(pa), Some(pb)) => {
                    let Some(Term::Lam(z, p2)) = project_value(val, &pa) else { return Ok(None) };
                    let Some(arg) = project_value(val, &pb) else { return Ok(None) };
                    let w = self.fresh_omega();
                    let head = Term::app(on_v(&pa), on_val(&pb));
                    let c = at(Term::app(on_val(&pa), on_val(&pb)));
                    match self.premise(Rule::AppFun, z, (**p2).clone(), arg.clone(), w)? {
                        Premise::Map(v2, s2) => {
                            let s = Term::Sum(vec![head, substitute(&s2, &on_v(&pb), &v2.name)]);
                            (Rule::AppFun, dual(v, s, c))
                        }
                        Premise::Zero => (Rule::AppConst, dual(v, head, c)),
                        Premise::Stuck => return Ok(None),
                    }
                }
                // A free variable applied to a component of y.
                (None, _) => return Ok(None),
            },
            other => unreachable!("not elementary: {other}"),
        }))
    }
}

/// A pullback body the pullback rules can work on directly.
fn ready(y: &Name, body: &Term) -> bool {
    is_let_series(body)
        || is_elementary(body)
        || matches!(body, Term::Pair(l, e) if matches!(&**l, Term::Var(n) if n == y) && is_elementary(e))
}

/// Folds literal summands: reals and equal-length dual vectors add up, and
/// a sum of pairs becomes a pair of sums.
fn fold_sum(items: &[Term]) -> Option<Term> {
    if items.iter().all(|i| matches!(i, Term::Pair(..))) {
        let (ls, rs) = items
            .iter()
            .map(|i| match i {
                Term::Pair(a, b) => ((**a).clone(), (**b).clone()),
                _ => unreachable!(),
            })
            .unzip();
        return Some(Term::pair(Term::sum(ls), Term::sum(rs)));
    }
    let reals = items.iter().filter(|i| matches!(i, Term::Real(_))).count();
    let len = items.iter().find_map(|i| match i {
        Term::DualVec(c) => Some(c.len()),
        _ => None,
    });
    let duals = items.iter().filter(|i| matches!(i, Term::DualVec(c) if Some(c.len()) == len)).count();
    if reals < 2 && duals < 2 {
        return None;
    }
    let mut out: Vec<Term> = Vec::new();
    let mut real_at = None;
    let mut dual_at = None;
    for i in items {
        match i {
            Term::Real(r) if reals >= 2 => match real_at {
                Some(k) => {
                    if let Term::Real(acc) = &mut out[k] {
                        *acc += r;
                    }
                }
                None => {
                    real_at = Some(out.len());
                    out.push(i.clone());
                }
            },
            Term::DualVec(c) if duals >= 2 && Some(c.len()) == len => match dual_at {
                Some(k) => {
                    if let Term::DualVec(acc) = &mut out[k] {
                        for (a, b) in acc.iter_mut().zip(c) {
                            *a += b;
                        }
                    }
                }
                None => {
                    dual_at = Some(out.len());
                    out.push(i.clone());
                }
            },
            _ => out.push(i.clone()),
        }
    }
    Some(Term::sum(out))
}
