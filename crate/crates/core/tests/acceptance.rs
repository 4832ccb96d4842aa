//! The nine acceptance criteria, one PASS/FAIL line each.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use pullback::anf::LetSeries;
use pullback::batch;
use pullback::corpus::{self, elementary_case, first_order_corpus, linear_case, random_point, ElementaryCase};
use pullback::engine::{Engine, EngineError, Rule, DEFAULT_FUEL};
use pullback::oracle::{finite_diff, lower, reverse_mode};
use pullback::syntax::{alpha_eq, basis_dual, decode_canonical, encode_vector, occurs_free};
use pullback::types::{check, infer};
use pullback::{parse_program, parse_term, Registry, Term, TypingEnv};
use rand::Rng;

const FIXTURE_SEED: u64 = 20;

fn fixture(name: &str) -> pullback::SourceProgram {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name);
    parse_program(&std::fs::read_to_string(&path).expect("fixture exists")).expect("fixture parses")
}

fn engine() -> Engine<'static> {
    Engine::new(Registry::builtin()).with_fuel(DEFAULT_FUEL)
}

fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    a == b || (a - b).abs() <= rel * a.abs().max(b.abs())
}

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn running_example() -> Outcome {
    let t = fixture("running.pb").term;
    let start = Instant::now();
    let n = engine().normalize(&t).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    if n.value != Term::DualVec(vec![660.0, 528.0]) {
        return Err(format!("value {}", n.value));
    }
    if elapsed >= Duration::from_secs(1) {
        return Err(format!("took {elapsed:?}"));
    }
    Ok(format!("{} in {elapsed:?}", n.value))
}

fn trace_fidelity() -> Outcome {
    let t = fixture("running.pb").term;
    let mut series = None;
    let n = engine()
        .normalize_observed(&t, &mut |s| {
            if series.is_none() {
                if let Term::App(h, _) = s {
                    if let Term::Pullback(_, body, _) = &**h {
                        series = LetSeries::from_term(body);
                    }
                }
            }
        })
        .map_err(|e| e.to_string())?;
    let series = series.ok_or("no administrative normal form in the trace")?;
    let shapes: Vec<String> = series
        .bindings
        .iter()
        .map(|(_, e)| match e {
            Term::Pair(..) => "pair".to_string(),
            Term::Prim(f, _) => f.to_string(),
            other => other.to_string(),
        })
        .collect();
    if shapes != ["pair", "g", "mult", "pow2"] {
        return Err(format!("let series {}", series.to_term()));
    }
    let forward: Vec<Term> = n
        .trace
        .entries
        .iter()
        .filter(|e| e.rule == Rule::PrimLit)
        .map(|e| parse_term(&e.result).unwrap())
        .collect();
    for want in [encode_vector(&[2.0, 11.0]), Term::Real(22.0), Term::Real(484.0)] {
        if !forward.contains(&want) {
            return Err(format!("forward value {want} missing"));
        }
    }
    let covectors: Vec<Vec<f64>> = n
        .trace
        .main_steps()
        .filter(|e| e.rule == Rule::DualJac)
        .filter_map(|e| match parse_term(&e.result) {
            Ok(Term::DualVec(v)) => Some(v),
            _ => None,
        })
        .collect();
    let pos44 = covectors.iter().position(|v| v.last() == Some(&44.0) && v[..v.len() - 1].iter().all(|x| *x == 0.0));
    let pos484 = covectors.iter().position(|v| v.ends_with(&[484.0, 88.0]) && v[..v.len() - 2].iter().all(|x| *x == 0.0));
    match (pos44, pos484) {
        (Some(a), Some(b)) if a < b => Ok(format!("{} then (44), (484, 88)", series.to_term())),
        _ => Err(format!("covectors {covectors:?}")),
    }
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let reg = Registry::builtin();
    let progs = first_order_corpus(FIXTURE_SEED, 200);
    let indexed: Vec<(usize, corpus::FirstOrder)> = progs.into_iter().enumerate().collect();
    let results = batch::map(&indexed, |(i, prog)| -> Result<usize, String> {
        let e = engine().recording(false);
        let mut r = corpus::rng(1000 + *i as u64);
        let graph = lower(reg, &prog.f, prog.n_in).map_err(|e| format!("{}: {e}", prog.f))?;
        let mut checked = 0;
        for _ in 0..5 {
            let x = random_point(&mut r, prog.n_in);
            let eval = |p: &[f64]| graph.eval(reg, p).expect("graph evaluates");
            let fd = finite_diff(&eval, &x, 1e-5);
            for p in 1..=prog.n_out {
                let g = e.grad(&prog.f, &x, p).map_err(|err| format!("{} at {x:?}: {err}", prog.f))?;
                let o = reverse_mode(&graph, reg, &x, p).map_err(|err| err.to_string())?;
                for c in 0..prog.n_in {
                    if !rel_close(g[c], o[c], 1e-9) {
                        return Err(format!("{} at {x:?} row {p}: engine {g:?} oracle {o:?}", prog.f));
                    }
                    let d = fd.get(p - 1, c);
                    // Central differences of an exact zero can leave rounding noise.
                    if !(rel_close(g[c], d, 1e-4) || (g[c] == 0.0 && d.abs() < 1e-6)) {
                        return Err(format!("{} at {x:?} row {p}: engine {g:?} finite differences {d}", prog.f));
                    }
                    checked += 1;
                }
            }
        }
        Ok(checked)
    });
    let mut entries = 0;
    for r in results {
        entries += r?;
    }
    let elapsed = start.elapsed();
    if elapsed >= Duration::from_secs(60) {
        return Err(format!("took {elapsed:?}"));
    }
    Ok(format!("200 programs, {entries} Jacobian entries in {elapsed:?}"))
}

/// Terms for the subject-reduction and normalization checks, with their contexts.
fn corpus_terms() -> Vec<(TypingEnv, Term)> {
    let mut out = Vec::new();
    for name in ["running.pb", "sum.pb"] {
        let prog = fixture(name);
        out.push((prog.env(), prog.term));
    }
    let mut r = corpus::rng(FIXTURE_SEED + 1);
    for prog in first_order_corpus(FIXTURE_SEED + 2, 100) {
        let x = random_point(&mut r, prog.n_in);
        let Term::Lam(b, body) = prog.f else { unreachable!() };
        let p = r.gen_range(1..=prog.n_out);
        let omega = basis_dual(p, prog.n_out).unwrap();
        out.push((TypingEnv::new(), Term::app(Term::Pullback(b, body, Box::new(omega)), encode_vector(&x))));
    }
    for _ in 0..50 {
        let c = linear_case(&mut r);
        out.push((TypingEnv::new(), c.at(&random_point(&mut r, c.n_in))));
    }
    for _ in 0..50 {
        let c = elementary_case(&mut r);
        let env = ElementaryCase::env().with("ω", c.omega_ty());
        out.push((env, elementary_term(&c)));
    }
    out
}

fn elementary_term(c: &ElementaryCase) -> Term {
    Term::app(Term::pullback(c.y.clone(), c.e.clone(), Term::var("ω")), c.value.clone())
}

fn subject_reduction() -> Outcome {
    let reg = Registry::builtin();
    let cases = corpus_terms();
    let results = batch::map(&cases, |(env, t)| -> Result<usize, String> {
        let ty = infer(env, reg, t).map_err(|e| format!("{t}: {e}"))?;
        let mut steps = 0;
        let mut failure = None;
        engine()
            .recording(false)
            .normalize_observed(t, &mut |s| {
                steps += 1;
                if failure.is_none() {
                    // Fresh dual-map binders are unannotated, so a reduct may have a more
                    // general principal type; it must still check against the original.
                    if let Err(e) = check(env, reg, s, &ty) {
                        failure = Some(format!("{s} does not have type {ty}: {e}"));
                    }
                }
            })
            .map_err(|e| format!("{t}: {e}"))?;
        match failure {
            Some(f) => Err(f),
            None => Ok(steps),
        }
    });
    let mut steps = 0;
    for r in results {
        steps += r?;
    }
    Ok(format!("{} terms, {steps} steps retyped", cases.len()))
}

fn strong_normalization() -> Outcome {
    let cases = corpus_terms();
    let terms: Vec<Term> = cases.into_iter().map(|(_, t)| t).collect();
    let results = batch::normalize_all(&engine().recording(false), &terms);
    let mut max = 0;
    for (t, r) in terms.iter().zip(results) {
        match r {
            Ok(n) => max = max.max(n.fuel_used),
            Err(e @ EngineError::Fuel { .. }) => return Err(format!("{t}: {e}")),
            Err(e) => return Err(format!("{t}: {e}")),
        }
    }
    Ok(format!("{} terms, at most {max} steps", terms.len()))
}

fn higher_order_fixture() -> Outcome {
    let prog = fixture("sum.pb");
    let n = engine().normalize(&prog.term).map_err(|e| e.to_string())?;
    let expected = parse_term("dual<v. v (\\x y. let z = x + y in z) 0> (ω 6)").unwrap();
    if !alpha_eq(&n.value, &expected) {
        return Err(format!("normal form {}", n.value));
    }
    // The last frame pulls back along ⟨l, l, λxy.L, λd.…, 0⟩ ↦ z₃ z₄ with ω.
    let last = n
        .trace
        .main_steps()
        .filter(|e| e.rule.is_pullback_application())
        .filter_map(|e| parse_term(&e.redex).ok())
        .filter_map(|t| match t {
            Term::App(h, arg) => match *h {
                Term::Pullback(_, _, om) if *om == Term::var("ω") => Some(*arg),
                _ => None,
            },
            _ => None,
        })
        .last()
        .ok_or("no frame applied with ω")?;
    let mut items = Vec::new();
    let mut cur = &last;
    while let Term::Pair(a, b) = cur {
        items.push((**b).clone());
        cur = a;
    }
    items.push(cur.clone());
    items.reverse();
    let list = parse_term("list[7, -1]").unwrap();
    let ok = items.len() == 5
        && alpha_eq(&items[0], &list)
        && alpha_eq(&items[1], &list)
        && matches!(items[2], Term::Lam(..))
        && matches!(items[3], Term::Lam(..))
        && items[4].is_zero();
    if !ok {
        return Err(format!("last frame argument {last}"));
    }
    Ok(format!("{}, B = ⟨{last}, 6⟩", n.value))
}

fn linearity() -> Outcome {
    let e = engine().recording(false);
    let mut r = corpus::rng(FIXTURE_SEED + 3);
    let eval = |c: &corpus::LinearCase, u: &[f64]| -> Result<Vec<f64>, String> {
        let v = e.normalize(&c.at(u)).map_err(|err| err.to_string())?.value;
        decode_canonical(&v, c.n_out).ok_or_else(|| format!("{} is not a literal", v))
    };
    for _ in 0..100 {
        let c = linear_case(&mut r);
        let u = random_point(&mut r, c.n_in);
        let v = random_point(&mut r, c.n_in);
        let k: f64 = r.gen_range(-2.0..2.0);
        let uv: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
        let ku: Vec<f64> = u.iter().map(|a| k * a).collect();
        let (fu, fv, fuv, fku) = (eval(&c, &u)?, eval(&c, &v)?, eval(&c, &uv)?, eval(&c, &ku)?);
        for i in 0..c.n_out {
            if (fuv[i] - fu[i] - fv[i]).abs() > 1e-9 || (fku[i] - k * fu[i]).abs() > 1e-9 {
                return Err(format!("{}: f(u)={fu:?} f(v)={fv:?} f(u+v)={fuv:?} f({k}u)={fku:?}", c.term));
            }
        }
    }
    Ok("100 terms additive and homogeneous".into())
}

fn adjointness() -> Outcome {
    let reg = Registry::builtin();
    let mut r = corpus::rng(FIXTURE_SEED + 4);
    let mut count = 0;
    for p in reg.iter() {
        for _ in 0..50 {
            let u: Vec<f64> = (0..p.n_in).map(|_| r.gen_range(-2.0..2.0)).collect();
            let w: Vec<f64> = (0..p.n_out).map(|_| r.gen_range(-2.0..2.0)).collect();
            let x: Vec<f64> = (0..p.n_in).map(|_| r.gen_range(-2.0..2.0)).collect();
            let ju = reg.jvp(&p.name, &u, &x).map_err(|e| e.to_string())?;
            let jw = reg.vjp(&p.name, &w, &x).map_err(|e| e.to_string())?;
            let lhs: f64 = w.iter().zip(&ju).map(|(a, b)| a * b).sum();
            let rhs: f64 = jw.iter().zip(&u).map(|(a, b)| a * b).sum();
            if !rel_close(lhs, rhs, 1e-10) {
                return Err(format!("{}: ⟨w, Ju⟩ = {lhs}, ⟨Jᵀw, u⟩ = {rhs}", p.name));
            }
            count += 1;
        }
    }
    Ok(format!("{count} triples"))
}

fn rule9_completeness() -> Outcome {
    let e = engine().recording(false);
    let mut r = corpus::rng(FIXTURE_SEED + 5);
    let (mut zero, mut nonzero) = (0, 0);
    for _ in 0..100 {
        let c = elementary_case(&mut r);
        let n = e.normalize(&elementary_term(&c)).map_err(|err| format!("{}: {err}", c.e))?;
        let constant = !occurs_free(&c.y, &c.e);
        if n.value.is_zero() != constant {
            return Err(format!("E = {}: normal form {}", c.e, n.value));
        }
        if constant {
            zero += 1;
        } else {
            nonzero += 1;
        }
    }
    Ok(format!("{zero} constant, {nonzero} dependent"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("running example", running_example),
        ("trace fidelity", trace_fidelity),
        ("oracle equivalence", oracle_equivalence),
        ("subject reduction", subject_reduction),
        ("strong normalization", strong_normalization),
        ("higher-order fixture", higher_order_fixture),
        ("linearity", linearity),
        ("primitive adjointness", adjointness),
        ("rule-9 completeness", rule9_completeness),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {}. {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}. {name}: {detail}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
