//! Surface syntax. Both an ASCII and the printed notation are accepted:
//!
//! ```text
//! assume ω : Omega R;                    header: a typed free variable
//! \x:R. e   λx y. e   \<x,y>. e          abstractions, pattern sugar
//! <a, b, c>   ⟨a, b⟩   pi1 e   π₂ e      tuples (left-nested), projections
//! e1 e2   e1 @ e2   e1 + e2   0          application, low-precedence application, sums, zero
//! f(e)   f<a, b>   jac f e   Jac f e     primitives and Jacobians
//! dual<x. e1> e2   pb (\x. e1) e2        dual maps and pullbacks
//! [1, 2]*   pbof [1]   list[7, -1]       dual vectors, constant 1-forms, Church lists
//! let x = e1; y = e2 in e3   (0 : R)     lets, annotated zero
//! ```
//!
//! Types: `R`, `R^n`, `A * B` or `A × B`, `A -> B` or `A ⇒ B`, postfix `A*`,
//! `Omega A` or `Ω A`, and `List A` for `(A ⇒ A ⇒ A) ⇒ A ⇒ A`.
//!
//! A primitive application is an identifier immediately followed by `(` or
//! a tuple bracket; with a space in between it is an ordinary application.

use thiserror::Error;

use crate::syntax::{church_list, pbof, substitute, Binder, Gensym, Name, Term, Ty};
use crate::types::TypingEnv;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

/// A parsed source file.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceProgram {
    pub source: String,
    pub term: Term,
    /// `assume` declarations, in order.
    pub assumptions: Vec<(Name, Ty)>,
}

impl SourceProgram {
    pub fn env(&self) -> TypingEnv {
        let mut env = TypingEnv::new();
        for (x, t) in &self.assumptions {
            env.insert(x.clone(), t.clone());
        }
        env
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String, u32),
    Num(f64, bool),
    Lambda,
    LAngle,
    RAngle,
    LParen,
    RParen,
    LBrack,
    RBrack,
    Comma,
    Semi,
    Colon,
    Dot,
    Eq,
    Plus,
    At,
    Star,
    Times,
    Caret,
    Arrow,
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
    /// No whitespace between this token and the previous one.
    glued: bool,
}

fn subscript_digit(c: char) -> Option<u32> {
    ('₀'..='₉').contains(&c).then(|| c as u32 - '₀' as u32)
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let mut glued = false;
    while i < chars.len() {
        let c = chars[i];
        let start = (line, col);
        let err = |m: String| ParseError { line: start.0, col: start.1, message: m };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            glued = false;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            glued = false;
            continue;
        }
        if c == '#' || (c == '-' && chars.get(i + 1) == Some(&'-')) {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let begin = i;
        let tok = if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            i += 1;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                // `1.` followed by a non-digit ends the number at the digit.
                if chars[i] == '.' && !chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) {
                    break;
                }
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '-' || chars[j] == '+') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[begin..i].iter().collect();
            let v: f64 = text.parse().map_err(|_| err(format!("bad number `{text}`")))?;
            Tok::Num(v, text == "0")
        } else if c == 'λ' || c == '\\' {
            i += 1;
            Tok::Lambda
        } else if c.is_alphabetic() || c == '_' {
            i += 1;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '\'') && subscript_digit(chars[i]).is_none() {
                i += 1;
            }
            let base: String = chars[begin..i].iter().collect();
            let mut id: u32 = 0;
            let mut sub = false;
            while let Some(d) = chars.get(i).copied().and_then(subscript_digit) {
                id = id.checked_mul(10).and_then(|x| x.checked_add(d)).ok_or_else(|| err("subscript too large".into()))?;
                sub = true;
                i += 1;
            }
            if sub && id == 0 {
                return Err(err("subscript ₀ is not a valid name id".into()));
            }
            Tok::Ident(base, id)
        } else {
            let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
            let (tok, len) = match (c, two.as_str()) {
                (_, "->") | (_, "=>") => (Tok::Arrow, 2),
                ('⇒', _) | ('→', _) => (Tok::Arrow, 1),
                ('<', _) | ('⟨', _) => (Tok::LAngle, 1),
                ('>', _) | ('⟩', _) => (Tok::RAngle, 1),
                ('(', _) => (Tok::LParen, 1),
                (')', _) => (Tok::RParen, 1),
                ('[', _) => (Tok::LBrack, 1),
                (']', _) => (Tok::RBrack, 1),
                (',', _) => (Tok::Comma, 1),
                (';', _) => (Tok::Semi, 1),
                (':', _) => (Tok::Colon, 1),
                ('.', _) => (Tok::Dot, 1),
                ('=', _) => (Tok::Eq, 1),
                ('+', _) => (Tok::Plus, 1),
                ('@', _) => (Tok::At, 1),
                ('*', _) => (Tok::Star, 1),
                ('×', _) => (Tok::Times, 1),
                ('^', _) => (Tok::Caret, 1),
                _ => return Err(err(format!("unexpected character `{c}`"))),
            };
            i += len;
            tok
        };
        col += i - begin;
        out.push(Token { tok, line: start.0, col: start.1, glued });
        glued = true;
    }
    out.push(Token { tok: Tok::Eof, line, col, glued: false });
    Ok(out)
}

const KEYWORDS: &[&str] = &["let", "in", "pb", "pbof", "dual", "jac", "Jac", "list", "assume", "pi1", "pi2"];

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    gensym: Gensym,
}

type PResult<T> = Result<T, ParseError>;

/// A binding form: a name or a tuple pattern.
enum Pattern {
    Name(Binder),
    Tuple(Vec<Pattern>),
}

impl Parser {
    fn new(src: &str) -> PResult<Parser> {
        let toks = lex(src)?;
        let max = toks
            .iter()
            .filter_map(|t| match t.tok {
                Tok::Ident(_, id) => Some(id),
                _ => None,
            })
            .max()
            .unwrap_or(0);
        Ok(Parser { toks, pos: 0, gensym: Gensym::above_id(max) })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn advance(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> PResult<T> {
        let t = &self.toks[self.pos];
        Err(ParseError { line: t.line, col: t.col, message: message.into() })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> PResult<()> {
        if *self.peek() == tok {
            self.advance();
            Ok(())
        } else {
            self.error(format!("expected {what}, found {}", describe(self.peek())))
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s, 0) if s == kw)
    }

    fn ident(&mut self) -> PResult<Name> {
        match self.peek().clone() {
            Tok::Ident(s, id) if !KEYWORDS.contains(&s.as_str()) => {
                self.advance();
                Ok(Name::with_id(&s, id))
            }
            t => self.error(format!("expected an identifier, found {}", describe(&t))),
        }
    }

    fn program(&mut self) -> PResult<(Vec<(Name, Ty)>, Term)> {
        let mut assumptions = Vec::new();
        while self.is_kw("assume") {
            self.advance();
            let x = self.ident()?;
            self.expect(Tok::Colon, "`:`")?;
            let t = self.ty()?;
            self.expect(Tok::Semi, "`;`")?;
            assumptions.push((x, t));
        }
        let t = self.term()?;
        if *self.peek() != Tok::Eof {
            return self.error(format!("unexpected {}", describe(self.peek())));
        }
        Ok((assumptions, t))
    }

    // term := let | lambda | sum ('@' sum)*
    fn term(&mut self) -> PResult<Term> {
        if self.is_kw("let") {
            return self.let_in();
        }
        if *self.peek() == Tok::Lambda {
            return self.lambda();
        }
        let mut t = self.sum()?;
        while *self.peek() == Tok::At {
            self.advance();
            let a = if *self.peek() == Tok::Lambda || self.is_kw("let") { self.term()? } else { self.sum()? };
            t = Term::app(t, a);
        }
        Ok(t)
    }

    fn let_in(&mut self) -> PResult<Term> {
        self.advance();
        let mut bindings = Vec::new();
        loop {
            let pat = self.pattern()?;
            self.expect(Tok::Eq, "`=`")?;
            let e = self.term()?;
            bindings.push((pat, e));
            match self.peek() {
                Tok::Semi => {
                    self.advance();
                }
                _ if self.is_kw("in") => {
                    self.advance();
                    break;
                }
                t => return self.error(format!("expected `;` or `in`, found {}", describe(t))),
            }
        }
        let mut body = self.term()?;
        for (pat, e) in bindings.into_iter().rev() {
            body = Term::app(self.abstract_over(pat, body), e);
        }
        Ok(body)
    }

    fn lambda(&mut self) -> PResult<Term> {
        self.advance();
        let mut pats = vec![self.pattern()?];
        while *self.peek() != Tok::Dot {
            pats.push(self.pattern()?);
        }
        self.advance();
        let mut body = self.term()?;
        for p in pats.into_iter().rev() {
            body = self.abstract_over(p, body);
        }
        Ok(body)
    }

    fn pattern(&mut self) -> PResult<Pattern> {
        if *self.peek() == Tok::LAngle {
            self.advance();
            let mut items = vec![self.pattern()?];
            while *self.peek() == Tok::Comma {
                self.advance();
                items.push(self.pattern()?);
            }
            self.expect(Tok::RAngle, "`>`")?;
            if items.len() < 2 {
                return self.error("a tuple pattern needs at least two components");
            }
            return Ok(Pattern::Tuple(items));
        }
        let x = self.ident()?;
        let ty = if *self.peek() == Tok::Colon {
            self.advance();
            Some(self.ty()?)
        } else {
            None
        };
        Ok(Pattern::Name(Binder { name: x, ty }))
    }

    /// `λpat. body`, with tuple patterns replaced by projections of a fresh binder.
    fn abstract_over(&mut self, pat: Pattern, body: Term) -> Term {
        let (b, body) = self.bind(pat, body);
        Term::Lam(b, Box::new(body))
    }

    fn bind(&mut self, pat: Pattern, body: Term) -> (Binder, Term) {
        match pat {
            Pattern::Name(b) => (b, body),
            Pattern::Tuple(items) => {
                let p = self.gensym.fresh("p");
                let body = self.destructure(Term::Var(p.clone()), items, body);
                (Binder::new(p), body)
            }
        }
    }

    // ⟨a, b, c⟩ is ⟨⟨a, b⟩, c⟩, so the last item is π₂ of the whole.
    fn destructure(&mut self, whole: Term, mut items: Vec<Pattern>, body: Term) -> Term {
        let last = items.pop().expect("non-empty pattern");
        let init = if items.len() == 1 { items.pop().unwrap() } else { Pattern::Tuple(items) };
        let body = self.place(Term::proj(2, whole.clone()), last, body);
        self.place(Term::proj(1, whole), init, body)
    }

    fn place(&mut self, at: Term, pat: Pattern, body: Term) -> Term {
        match pat {
            Pattern::Name(b) => substitute(&body, &at, &b.name),
            Pattern::Tuple(items) => self.destructure(at, items, body),
        }
    }

    fn sum(&mut self) -> PResult<Term> {
        let mut items = vec![self.app()?];
        while *self.peek() == Tok::Plus {
            self.advance();
            items.push(self.app()?);
        }
        Ok(if items.len() == 1 { items.pop().unwrap() } else { Term::Sum(items) })
    }

    fn starts_atom(&self) -> bool {
        match self.peek() {
            Tok::Ident(s, 0) => !matches!(s.as_str(), "let" | "in" | "assume"),
            Tok::Ident(..) | Tok::Num(..) | Tok::LParen | Tok::LAngle | Tok::LBrack => true,
            _ => false,
        }
    }

    fn app(&mut self) -> PResult<Term> {
        let mut t = self.head()?;
        while self.starts_atom() {
            let a = self.atom()?;
            t = Term::app(t, a);
        }
        Ok(t)
    }

    /// Prefix forms that take one argument; otherwise an atom.
    fn head(&mut self) -> PResult<Term> {
        if let Tok::Ident(s, id) = self.peek().clone() {
            let proj = match (s.as_str(), id) {
                ("pi1", 0) | ("π", 1) => Some(1),
                ("pi2", 0) | ("π", 2) => Some(2),
                _ => None,
            };
            if let Some(i) = proj {
                self.advance();
                return Ok(Term::proj(i, self.atom()?));
            }
            match s.as_str() {
                "jac" | "Jac" if id == 0 => {
                    self.advance();
                    let f = self.ident()?;
                    return Ok(Term::jac(f.base(), self.atom()?));
                }
                "dual" if id == 0 => {
                    self.advance();
                    self.expect(Tok::LAngle, "`<`")?;
                    let pat = self.pattern()?;
                    self.expect(Tok::Dot, "`.`")?;
                    let body = self.term()?;
                    self.expect(Tok::RAngle, "`>`")?;
                    let cov = self.atom()?;
                    let (b, body) = self.bind(pat, body);
                    return Ok(Term::DualMap(b, Box::new(body), Box::new(cov)));
                }
                "pb" if id == 0 => {
                    self.advance();
                    self.expect(Tok::LParen, "`(`")?;
                    if *self.peek() != Tok::Lambda {
                        return self.error("pb expects an abstraction `(\\x. e)`");
                    }
                    let Term::Lam(b, body) = self.lambda()? else { unreachable!() };
                    self.expect(Tok::RParen, "`)`")?;
                    let om = self.atom()?;
                    return Ok(Term::Pullback(b, body, Box::new(om)));
                }
                _ => {}
            }
        }
        self.atom()
    }

    fn atom(&mut self) -> PResult<Term> {
        match self.peek().clone() {
            Tok::Num(v, is_zero) => {
                self.advance();
                Ok(if is_zero { Term::zero() } else { Term::Real(v) })
            }
            Tok::LParen => {
                self.advance();
                let t = self.term()?;
                if *self.peek() == Tok::Colon {
                    if !t.is_zero() {
                        return self.error("only `0` takes a type ascription");
                    }
                    self.advance();
                    let ty = self.ty()?;
                    self.expect(Tok::RParen, "`)`")?;
                    return Ok(Term::Zero(Some(ty)));
                }
                self.expect(Tok::RParen, "`)`")?;
                Ok(t)
            }
            Tok::LAngle => Ok(Term::tuple(self.tuple()?)),
            Tok::LBrack => {
                let v = self.reals()?;
                self.expect(Tok::Star, "`*` after a dual vector")?;
                Ok(Term::DualVec(v))
            }
            Tok::Ident(s, 0) if s == "pbof" => {
                self.advance();
                Ok(pbof(self.reals()?))
            }
            Tok::Ident(s, 0) if s == "list" => {
                self.advance();
                self.expect(Tok::LBrack, "`[`")?;
                let mut items = Vec::new();
                if *self.peek() != Tok::RBrack {
                    items.push(self.term()?);
                    while *self.peek() == Tok::Comma {
                        self.advance();
                        items.push(self.term()?);
                    }
                }
                self.expect(Tok::RBrack, "`]`")?;
                Ok(church_list(items))
            }
            Tok::Ident(s, id) if is_prefix(&s, id) => self.error(format!("`{}` in argument position needs parentheses", Name::with_id(&s, id))),
            Tok::Ident(..) => {
                let x = self.ident()?;
                let glued = self.toks[self.pos].glued;
                match self.peek() {
                    Tok::LParen if glued => {
                        self.advance();
                        let a = self.term()?;
                        self.expect(Tok::RParen, "`)`")?;
                        Ok(Term::prim(x.base(), a))
                    }
                    Tok::LAngle if glued => Ok(Term::prim(x.base(), Term::tuple(self.tuple()?))),
                    _ => Ok(Term::Var(x)),
                }
            }
            t => self.error(format!("expected a term, found {}", describe(&t))),
        }
    }

    fn tuple(&mut self) -> PResult<Vec<Term>> {
        self.expect(Tok::LAngle, "`<`")?;
        let mut items = vec![self.term()?];
        while *self.peek() == Tok::Comma {
            self.advance();
            items.push(self.term()?);
        }
        self.expect(Tok::RAngle, "`>`")?;
        Ok(items)
    }

    fn reals(&mut self) -> PResult<Vec<f64>> {
        self.expect(Tok::LBrack, "`[`")?;
        let mut v = Vec::new();
        loop {
            match self.advance() {
                Tok::Num(r, _) => v.push(r),
                t => {
                    self.pos -= 1;
                    return self.error(format!("expected a number, found {}", describe(&t)));
                }
            }
            match self.advance() {
                Tok::Comma => {}
                Tok::RBrack => return Ok(v),
                t => {
                    self.pos -= 1;
                    return self.error(format!("expected `,` or `]`, found {}", describe(&t)));
                }
            }
        }
    }

    // ty := prod (('->' | '⇒') ty)?
    fn ty(&mut self) -> PResult<Ty> {
        let a = self.ty_prod()?;
        if *self.peek() == Tok::Arrow {
            self.advance();
            return Ok(Ty::arrow(a, self.ty()?));
        }
        Ok(a)
    }

    fn starts_ty(&self, k: usize) -> bool {
        match self.peek_at(k) {
            Tok::Ident(s, 0) => matches!(s.as_str(), "R" | "Omega" | "Ω" | "List"),
            Tok::LParen => true,
            _ => false,
        }
    }

    // A `*` followed by a type is a product; otherwise it marks a dual.
    fn ty_prod(&mut self) -> PResult<Ty> {
        let mut t = self.ty_postfix()?;
        while matches!(self.peek(), Tok::Times) || (matches!(self.peek(), Tok::Star) && self.starts_ty(1)) {
            self.advance();
            t = Ty::prod(t, self.ty_postfix()?);
        }
        Ok(t)
    }

    fn ty_postfix(&mut self) -> PResult<Ty> {
        let mut t = self.ty_atom()?;
        while *self.peek() == Tok::Star && !self.starts_ty(1) {
            self.advance();
            t = Ty::dual(t);
        }
        Ok(t)
    }

    fn ty_atom(&mut self) -> PResult<Ty> {
        match self.peek().clone() {
            Tok::LParen => {
                self.advance();
                let t = self.ty()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(t)
            }
            Tok::Ident(s, 0) if s == "R" => {
                self.advance();
                if *self.peek() == Tok::Caret {
                    self.advance();
                    match self.advance() {
                        Tok::Num(n, _) if n >= 1.0 && n.fract() == 0.0 => return Ok(Ty::rn(n as usize)),
                        _ => {
                            self.pos -= 1;
                            return self.error("expected a positive dimension after `^`");
                        }
                    }
                }
                Ok(Ty::Real)
            }
            Tok::Ident(s, 0) if s == "Omega" || s == "Ω" => {
                self.advance();
                Ok(Ty::omega(self.ty_postfix()?))
            }
            Tok::Ident(s, 0) if s == "List" => {
                self.advance();
                let a = self.ty_postfix()?;
                let step = Ty::arrow(a.clone(), Ty::arrow(a.clone(), a.clone()));
                Ok(Ty::arrow(step, Ty::arrow(a.clone(), a)))
            }
            t => self.error(format!("expected a type, found {}", describe(&t))),
        }
    }
}

fn is_prefix(s: &str, id: u32) -> bool {
    match id {
        0 => matches!(s, "pi1" | "pi2" | "jac" | "Jac" | "dual" | "pb"),
        1 | 2 => s == "π",
        _ => false,
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s, 0) => format!("`{s}`"),
        Tok::Ident(s, id) => format!("`{}`", Name::with_id(s, *id)),
        Tok::Num(v, _) => format!("`{v}`"),
        Tok::Eof => "end of input".into(),
        other => format!("{other:?}").to_lowercase(),
    }
}

/// Parses a file: `assume` headers followed by one term.
pub fn parse_program(src: &str) -> Result<SourceProgram, ParseError> {
    let mut p = Parser::new(src)?;
    let (assumptions, term) = p.program()?;
    Ok(SourceProgram { source: src.to_string(), term, assumptions })
}

/// Parses a single term.
pub fn parse_term(src: &str) -> Result<Term, ParseError> {
    let prog = parse_program(src)?;
    if !prog.assumptions.is_empty() {
        return Err(ParseError { line: 1, col: 1, message: "unexpected `assume` header".into() });
    }
    Ok(prog.term)
}

pub fn parse_type(src: &str) -> Result<Ty, ParseError> {
    let mut p = Parser::new(src)?;
    let t = p.ty()?;
    if *p.peek() != Tok::Eof {
        return p.error(format!("unexpected {}", describe(p.peek())));
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{alpha_eq, encode_vector};

    fn running() -> Term {
        let p = Name::new("p");
        let body = Term::prim(
            "pow2",
            Term::prim("mult", Term::prim("g", Term::pair(Term::proj(1, Term::Var(p.clone())), Term::proj(2, Term::Var(p.clone()))))),
        );
        Term::app(Term::pullback(p, body, pbof(vec![1.0])), encode_vector(&[1.0, 3.0]))
    }

    #[test]
    fn running_example_surface_forms() {
        let ascii = parse_term("pb (\\<x,y>. pow2(mult(g<x,y>))) (pbof [1]) @ <1.0, 3.0>").unwrap();
        assert!(alpha_eq(&ascii, &running()), "{ascii}");
        let printed = parse_term("pb (λ⟨x, y⟩. pow2(mult(g⟨x, y⟩))) (pbof [1]) ⟨1, 3⟩").unwrap();
        assert!(alpha_eq(&printed, &running()));
    }

    #[test]
    fn zero_and_ascriptions() {
        assert_eq!(parse_term("0").unwrap(), Term::zero());
        assert_eq!(parse_term("0.0").unwrap(), Term::Real(0.0));
        assert_eq!(parse_term("(0 : R)").unwrap(), Term::Zero(Some(Ty::Real)));
        assert!(parse_term("(1 : R)").is_err());
    }

    #[test]
    fn dual_map_parses_without_checking_linearity() {
        let t = parse_term("dual<y. sin(y)> [1]*").unwrap();
        assert!(matches!(t, Term::DualMap(..)));
    }

    #[test]
    fn types() {
        assert_eq!(parse_type("R^3").unwrap(), Ty::rn(3));
        assert_eq!(parse_type("R * R -> R").unwrap(), Ty::arrow(Ty::rn(2), Ty::Real));
        assert_eq!(parse_type("(R × R)*").unwrap(), Ty::dual(Ty::rn(2)));
        assert_eq!(parse_type("R* × R").unwrap(), Ty::prod(Ty::dual(Ty::Real), Ty::Real));
        assert_eq!(parse_type("Omega R").unwrap(), Ty::omega(Ty::Real));
        assert_eq!(parse_type("R ⇒ R ⇒ R").unwrap(), Ty::arrow(Ty::Real, Ty::arrow(Ty::Real, Ty::Real)));
        assert_eq!(parse_type("Ω (R × R)").unwrap(), Ty::omega(Ty::rn(2)));
    }

    #[test]
    fn lets_and_multi_binders() {
        let t = parse_term("let a = 1; b = add<a, a> in \\x y. x + b").unwrap();
        let expected = Term::let_in(
            "a",
            Term::Real(1.0),
            Term::let_in(
                "b",
                Term::prim("add", Term::pair(Term::var("a"), Term::var("a"))),
                Term::lam("x", Term::lam("y", Term::Sum(vec![Term::var("x"), Term::var("b")]))),
            ),
        );
        assert_eq!(t, expected);
    }

    #[test]
    fn glued_parenthesis_means_primitive() {
        assert_eq!(parse_term("sin(x)").unwrap(), Term::prim("sin", Term::var("x")));
        assert_eq!(parse_term("f (x)").unwrap(), Term::app(Term::var("f"), Term::var("x")));
    }

    #[test]
    fn subscripts_are_ids() {
        assert_eq!(parse_term("v₁₂").unwrap(), Term::Var(Name::with_id("v", 12)));
        assert_eq!(parse_term("π₁ v₁").unwrap(), Term::proj(1, Term::Var(Name::with_id("v", 1))));
    }

    #[test]
    fn pattern_binder_avoids_existing_ids() {
        let t = parse_term("\\<a, b>. p₁").unwrap();
        let Term::Lam(b, _) = &t else { panic!() };
        assert_eq!(b.name, Name::with_id("p", 2));
    }

    #[test]
    fn headers() {
        let prog = parse_program("assume ω : Omega R;\nω 1").unwrap();
        assert_eq!(prog.assumptions, vec![(Name::new("ω"), Ty::omega(Ty::Real))]);
        assert_eq!(prog.env().get(&Name::new("ω")), Some(&Ty::omega(Ty::Real)));
    }

    #[test]
    fn errors_carry_positions() {
        let e = parse_term("let x = 1\n in (x").unwrap_err();
        assert_eq!((e.line, e.col), (2, 7));
        let e = parse_term("<1, 2").unwrap_err();
        assert_eq!(e.line, 1);
        assert!(parse_term("1 $ 2").is_err());
        assert!(parse_term("f π₁ x").is_err());
    }

    #[test]
    fn printed_terms_round_trip() {
        let srcs = [
            "pb (\\<x,y>. pow2(mult(g<x,y>))) (pbof [1]) @ <1.0, 3.0>",
            "dual<v:R*R. jac sin (pi1 v) (pi1 <0.5, 2>)> (w sin(pi1 <0.5, 2>))",
            "\\l. l (\\x y. x + y) 0",
            "let z = <x, y> in f (z + -1) [0, 44]*",
            "pb (\\y. <y, sin(y)>) (pb (\\w. cos(pi2 w)) k)",
            "(0 : R * R) + list[7, -1]",
        ];
        for s in srcs {
            let t = parse_term(s).unwrap();
            let back = parse_term(&t.to_string()).unwrap_or_else(|e| panic!("{t}: {e}"));
            assert!(alpha_eq(&t, &back), "{s}\n{t}\n{back}");
        }
    }
}
