//! Batch evaluation. Distinct terms and distinct Jacobian rows reduce
//! independently, so they are spread over a rayon pool when the `parallel`
//! feature is enabled and evaluated in order otherwise. Results come back
//! in input order either way.

use crate::engine::{Engine, EngineError, Normalized};
use crate::syntax::Term;

/// Maps `f` over `items`.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Maps `f` over `items` on the calling thread.
pub fn map_sequential<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

pub fn normalize_all(engine: &Engine<'_>, terms: &[Term]) -> Vec<Result<Normalized, EngineError>> {
    map(terms, |t| engine.normalize(t))
}

/// The Jacobian of `f` at `x`, one reverse pass per row.
pub fn jacobian(engine: &Engine<'_>, f: &Term, x: &[f64]) -> Result<Vec<Vec<f64>>, EngineError> {
    let m = engine.output_dim(f, x)?;
    let rows: Vec<usize> = (1..=m).collect();
    map(&rows, |&p| engine.grad(f, x, p)).into_iter().collect()
}
