//! An interpreter for a simply typed lambda calculus extended with dual
//! vectors, Jacobians, dual maps and pullbacks. Call-by-value reduction of
//! `pb` terms performs higher-order reverse-mode differentiation.
//!
//! ```
//! use pullback::{parse_term, Engine, Registry, Term};
//!
//! let t = parse_term("pb (\\<x,y>. pow2(mult(g<x,y>))) (pbof [1]) @ <1, 3>").unwrap();
//! let n = Engine::new(Registry::builtin()).normalize(&t).unwrap();
//! assert_eq!(n.value, Term::DualVec(vec![660.0, 528.0]));
//! ```

pub mod anf;
pub mod batch;
pub mod corpus;
pub mod engine;
pub mod oracle;
pub mod parse;
pub mod prims;
pub mod print;
pub mod syntax;
pub mod types;

pub use engine::{Decomposition, Engine, EngineError, Normalized, Rule, Trace, TraceEntry};
pub use parse::{parse_program, parse_term, parse_type, ParseError, SourceProgram};
pub use prims::{Primitive, Registry};
pub use syntax::{Binder, Name, Term, Ty};
pub use types::{TypeError, TypingEnv};
