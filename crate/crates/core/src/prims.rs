//! Registry of differentiable primitives `f : Rⁿ → Rᵐ` with evaluators and
//! analytic Jacobians, plus the `jvp`/`vjp` kernels used by reductions (3),
//! (4) and (5).

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, OnceLock};

use thiserror::Error;

/// Dense row-major `m × n` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Matrix { rows: rows.len(), cols, data }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    /// `A × u`.
    pub fn mul_vec(&self, u: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j) * u[j]).sum())
            .collect()
    }

    /// `Aᵀ × w`.
    pub fn tmul_vec(&self, w: &[f64]) -> Vec<f64> {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.get(i, j) * w[i]).sum())
            .collect()
    }
}

type EvalFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
type JacFn = dyn Fn(&[f64]) -> Matrix + Send + Sync;

/// A registered function symbol.
#[derive(Clone)]
pub struct Primitive {
    pub name: Arc<str>,
    pub n_in: usize,
    pub n_out: usize,
    eval: Arc<EvalFn>,
    jacobian: Arc<JacFn>,
}

impl fmt::Debug for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: R^{} → R^{}", self.name, self.n_in, self.n_out)
    }
}

impl Primitive {
    pub fn new(
        name: &str,
        n_in: usize,
        n_out: usize,
        eval: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        jacobian: impl Fn(&[f64]) -> Matrix + Send + Sync + 'static,
    ) -> Self {
        Primitive {
            name: Arc::from(name),
            n_in,
            n_out,
            eval: Arc::new(eval),
            jacobian: Arc::new(jacobian),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        (self.eval)(x)
    }

    pub fn jacobian_at(&self, x: &[f64]) -> Matrix {
        (self.jacobian)(x)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrimError {
    #[error("primitive `{0}` is already registered")]
    Duplicate(String),
    #[error("primitive `{0}` must have input and output dimension at least 1")]
    ZeroDimension(String),
    #[error("unknown primitive `{0}`")]
    Unknown(String),
    #[error("primitive `{name}` expects a vector of length {expected}, got {got}")]
    Dimension { name: String, expected: usize, got: usize },
    #[error("primitive `{name}` disagrees with finite differences at {point:?}")]
    SelfTest { name: String, point: Vec<f64> },
}

/// The set of primitives. Build it once, then share it read-only.
#[derive(Clone, Debug, Default)]
pub struct Registry {
    prims: BTreeMap<Arc<str>, Primitive>,
}

const SELF_TEST_H: f64 = 1e-5;
const SELF_TEST_TOL: f64 = 1e-4;

impl Registry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Registers `p` after checking its Jacobian against central finite
    /// differences at a few fixed points.
    pub fn register(&mut self, p: Primitive) -> Result<(), PrimError> {
        if self.prims.contains_key(&p.name) {
            return Err(PrimError::Duplicate(p.name.to_string()));
        }
        if p.n_in == 0 || p.n_out == 0 {
            return Err(PrimError::ZeroDimension(p.name.to_string()));
        }
        self_test(&p)?;
        self.prims.insert(p.name.clone(), p);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Primitive, PrimError> {
        self.prims.get(name).ok_or_else(|| PrimError::Unknown(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.prims.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Primitive> {
        self.prims.values()
    }

    pub fn eval_prim(&self, name: &str, x: &[f64]) -> Result<Vec<f64>, PrimError> {
        let p = self.get(name)?;
        check_len(p, p.n_in, x.len())?;
        Ok(p.eval(x))
    }

    /// `J(f)(point) × tangent`.
    pub fn jvp(&self, name: &str, tangent: &[f64], point: &[f64]) -> Result<Vec<f64>, PrimError> {
        let p = self.get(name)?;
        check_len(p, p.n_in, tangent.len())?;
        check_len(p, p.n_in, point.len())?;
        Ok(p.jacobian_at(point).mul_vec(tangent))
    }

    /// `J(f)(point)ᵀ × cotangent`.
    pub fn vjp(&self, name: &str, cotangent: &[f64], point: &[f64]) -> Result<Vec<f64>, PrimError> {
        let p = self.get(name)?;
        check_len(p, p.n_out, cotangent.len())?;
        check_len(p, p.n_in, point.len())?;
        Ok(p.jacobian_at(point).tmul_vec(cotangent))
    }

    /// The built-in set: add, mult, pow2, neg, exp, sin, cos and `g`.
    pub fn builtin() -> &'static Registry {
        static REG: OnceLock<Registry> = OnceLock::new();
        REG.get_or_init(|| {
            let mut r = Registry::empty();
            for p in builtin_prims() {
                r.register(p).expect("built-in primitive failed its self-test");
            }
            r
        })
    }
}

fn check_len(p: &Primitive, expected: usize, got: usize) -> Result<(), PrimError> {
    if expected == got {
        Ok(())
    } else {
        Err(PrimError::Dimension { name: p.name.to_string(), expected, got })
    }
}

fn self_test(p: &Primitive) -> Result<(), PrimError> {
    let points: Vec<Vec<f64>> = [0.3, -0.7, 1.3]
        .iter()
        .map(|&s| (0..p.n_in).map(|i| s + 0.25 * i as f64).collect())
        .collect();
    for x in points {
        let j = p.jacobian_at(&x);
        if j.rows != p.n_out || j.cols != p.n_in || p.eval(&x).len() != p.n_out {
            return Err(PrimError::SelfTest { name: p.name.to_string(), point: x });
        }
        for col in 0..p.n_in {
            let mut hi = x.clone();
            let mut lo = x.clone();
            hi[col] += SELF_TEST_H;
            lo[col] -= SELF_TEST_H;
            let (fh, fl) = (p.eval(&hi), p.eval(&lo));
            for row in 0..p.n_out {
                let fd = (fh[row] - fl[row]) / (2.0 * SELF_TEST_H);
                let an = j.get(row, col);
                if (fd - an).abs() > SELF_TEST_TOL * an.abs().max(1.0) {
                    return Err(PrimError::SelfTest { name: p.name.to_string(), point: x });
                }
            }
        }
    }
    Ok(())
}

fn unary(
    name: &str,
    f: fn(f64) -> f64,
    df: fn(f64) -> f64,
) -> Primitive {
    Primitive::new(name, 1, 1, move |x| vec![f(x[0])], move |x| Matrix::from_rows(&[&[df(x[0])]]))
}

fn builtin_prims() -> Vec<Primitive> {
    vec![
        Primitive::new("add", 2, 1, |x| vec![x[0] + x[1]], |_| Matrix::from_rows(&[&[1.0, 1.0]])),
        Primitive::new("mult", 2, 1, |x| vec![x[0] * x[1]], |x| Matrix::from_rows(&[&[x[1], x[0]]])),
        unary("pow2", |x| x * x, |x| 2.0 * x),
        unary("neg", |x| -x, |_| -1.0),
        unary("exp", f64::exp, f64::exp),
        unary("sin", f64::sin, f64::cos),
        unary("cos", f64::cos, |x| -x.sin()),
        Primitive::new(
            "g",
            2,
            2,
            |x| vec![x[0] + 1.0, 2.0 * x[0] + x[1] * x[1]],
            |x| Matrix::from_rows(&[&[1.0, 0.0], &[2.0, 2.0 * x[1]]]),
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reg() -> &'static Registry {
        Registry::builtin()
    }

    #[test]
    fn forward_phase_values() {
        assert_eq!(reg().eval_prim("g", &[1.0, 3.0]).unwrap(), vec![2.0, 11.0]);
        assert_eq!(reg().eval_prim("mult", &[2.0, 11.0]).unwrap(), vec![22.0]);
        assert_eq!(reg().eval_prim("pow2", &[22.0]).unwrap(), vec![484.0]);
    }

    #[test]
    fn jvp_examples() {
        assert_eq!(reg().jvp("g", &[1.0, 0.0], &[1.0, 3.0]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(reg().jvp("pow2", &[0.0], &[17.0]).unwrap(), vec![0.0]);
        assert_eq!(reg().jvp("mult", &[1.0, 1.0], &[2.0, 11.0]).unwrap(), vec![13.0]);
    }

    #[test]
    fn vjp_examples() {
        assert_eq!(reg().vjp("pow2", &[1.0], &[22.0]).unwrap(), vec![44.0]);
        assert_eq!(reg().vjp("mult", &[44.0], &[2.0, 11.0]).unwrap(), vec![484.0, 88.0]);
        assert_eq!(reg().vjp("g", &[484.0, 88.0], &[1.0, 3.0]).unwrap(), vec![660.0, 528.0]);
    }

    #[test]
    fn registration_rules() {
        let mut r = Registry::empty();
        let sq = || unary("pow2", |x| x * x, |x| 2.0 * x);
        r.register(sq()).unwrap();
        assert_eq!(r.register(sq()), Err(PrimError::Duplicate("pow2".into())));
        let bad = Primitive::new("k", 0, 1, |_| vec![1.0], |_| Matrix::zeros(1, 0));
        assert!(matches!(r.register(bad), Err(PrimError::ZeroDimension(_))));
        let wrong = unary("sq", |x| x * x, |x| 3.0 * x);
        assert!(matches!(r.register(wrong), Err(PrimError::SelfTest { .. })));
    }

    #[test]
    fn dimension_errors() {
        assert!(matches!(reg().eval_prim("g", &[1.0]), Err(PrimError::Dimension { .. })));
        assert!(matches!(reg().vjp("mult", &[1.0, 2.0], &[1.0, 1.0]), Err(PrimError::Dimension { .. })));
        assert!(matches!(reg().eval_prim("nope", &[1.0]), Err(PrimError::Unknown(_))));
    }
}
