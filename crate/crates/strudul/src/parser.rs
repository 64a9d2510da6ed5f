//! Surface syntax for `.zks` files: a lexer, a recursive-descent parser into
//! a nested surface tree, and a normalizer that lowers the tree to A-normal
//! form, hoisting non-value subexpressions into `$t` temporaries. Types and
//! labels of `$t` binders are placeholders until the elaboration pass fills
//! them in from synthesized types.
//!
//! Top level: class declarations followed by `main { e }`. Code inside `cnp`
//! bodies is parsed in combined mode, where lets carry `@label` types, `ref`
//! and method calls take labels, and the computed-input forms `x <~ e` and
//! `!!x` are available.

use crate::syntax::*;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at {line}:{col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

/// Internal binders introduced by normalization or compilation. Their declared
/// types are placeholders that elaboration replaces.
pub fn is_temp(name: &str) -> bool {
    name.starts_with("$t")
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Colon,
    Dot,
    At,
    Eq,
    EqEq,
    Lt,
    Plus,
    Minus,
    Star,
    Bang,
    BangBang,
    Assign,
    InputArrow,
    AndAnd,
    OrOr,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tok::Ident(s) => return write!(f, "'{s}'"),
            Tok::Int(n) => return write!(f, "'{n}'"),
            Tok::LParen => "'('",
            Tok::RParen => "')'",
            Tok::LBrace => "'{'",
            Tok::RBrace => "'}'",
            Tok::LBracket => "'['",
            Tok::RBracket => "']'",
            Tok::Comma => "','",
            Tok::Semi => "';'",
            Tok::Colon => "':'",
            Tok::Dot => "'.'",
            Tok::At => "'@'",
            Tok::Eq => "'='",
            Tok::EqEq => "'=='",
            Tok::Lt => "'<'",
            Tok::Plus => "'+'",
            Tok::Minus => "'-'",
            Tok::Star => "'*'",
            Tok::Bang => "'!'",
            Tok::BangBang => "'!!'",
            Tok::Assign => "':='",
            Tok::InputArrow => "'<~'",
            Tok::AndAnd => "'&&'",
            Tok::OrOr => "'||'",
            Tok::Eof => "end of input",
        };
        write!(f, "{s}")
    }
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
}

type Spanned = (Tok, usize, usize);

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Lexer<'a> {
        Lexer { src: src.as_bytes(), pos: 0, line: 1, col: 1 }
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError { line: self.line, col: self.col, msg: msg.into() }
    }

    fn bump(&mut self) -> u8 {
        let c = self.src[self.pos];
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        c
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn peek2(&self) -> Option<u8> {
        self.src.get(self.pos + 1).copied()
    }

    fn lex(mut self) -> Result<Vec<Spanned>, ParseError> {
        let mut out = Vec::new();
        loop {
            while let Some(c) = self.peek() {
                if c.is_ascii_whitespace() {
                    self.bump();
                } else if c == b'/' && self.peek2() == Some(b'/') {
                    while let Some(c) = self.peek() {
                        if c == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                } else {
                    break;
                }
            }
            let (line, col) = (self.line, self.col);
            let Some(c) = self.peek() else {
                out.push((Tok::Eof, line, col));
                return Ok(out);
            };
            let tok = match c {
                b'(' => {
                    self.bump();
                    Tok::LParen
                }
                b')' => {
                    self.bump();
                    Tok::RParen
                }
                b'{' => {
                    self.bump();
                    Tok::LBrace
                }
                b'}' => {
                    self.bump();
                    Tok::RBrace
                }
                b'[' => {
                    self.bump();
                    Tok::LBracket
                }
                b']' => {
                    self.bump();
                    Tok::RBracket
                }
                b',' => {
                    self.bump();
                    Tok::Comma
                }
                b';' => {
                    self.bump();
                    Tok::Semi
                }
                b'.' => {
                    self.bump();
                    Tok::Dot
                }
                b'@' => {
                    self.bump();
                    Tok::At
                }
                b'+' => {
                    self.bump();
                    Tok::Plus
                }
                b'-' => {
                    self.bump();
                    Tok::Minus
                }
                b'*' => {
                    self.bump();
                    Tok::Star
                }
                b':' => {
                    self.bump();
                    if self.peek() == Some(b'=') {
                        self.bump();
                        Tok::Assign
                    } else {
                        Tok::Colon
                    }
                }
                b'=' => {
                    self.bump();
                    if self.peek() == Some(b'=') {
                        self.bump();
                        Tok::EqEq
                    } else {
                        Tok::Eq
                    }
                }
                b'<' => {
                    self.bump();
                    if self.peek() == Some(b'~') {
                        self.bump();
                        Tok::InputArrow
                    } else {
                        Tok::Lt
                    }
                }
                b'!' => {
                    self.bump();
                    if self.peek() == Some(b'!') {
                        self.bump();
                        Tok::BangBang
                    } else {
                        Tok::Bang
                    }
                }
                b'&' => {
                    self.bump();
                    if self.peek() == Some(b'&') {
                        self.bump();
                        Tok::AndAnd
                    } else {
                        return Err(self.err("expected '&&'"));
                    }
                }
                b'|' => {
                    self.bump();
                    if self.peek() == Some(b'|') {
                        self.bump();
                        Tok::OrOr
                    } else {
                        return Err(self.err("expected '||'"));
                    }
                }
                b'0'..=b'9' => {
                    let mut n: i64 = 0;
                    while let Some(c @ b'0'..=b'9') = self.peek() {
                        n = n
                            .checked_mul(10)
                            .and_then(|n| n.checked_add((c - b'0') as i64))
                            .ok_or_else(|| self.err("integer literal out of range"))?;
                        self.bump();
                    }
                    Tok::Int(n)
                }
                c if c.is_ascii_alphabetic() || c == b'_' || c == b'$' => {
                    let start = self.pos;
                    while let Some(c) = self.peek() {
                        if c.is_ascii_alphanumeric() || c == b'_' || c == b'$' {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    Tok::Ident(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
                }
                other => return Err(self.err(format!("unexpected character '{}'", other as char))),
            };
            out.push((tok, line, col));
        }
    }
}

// ---------------------------------------------------------------------------
// Surface tree

#[derive(Debug, Clone)]
enum SExpr {
    Var(Name),
    Unit,
    Bool(bool),
    Int(i64),
    New(Name, Vec<SExpr>),
    Field(Box<SExpr>, Name),
    Call { recv: Box<SExpr>, method: Name, label: Option<Label>, args: Vec<SExpr> },
    Prim(PrimOp, Box<SExpr>, Box<SExpr>),
    And(Box<SExpr>, Box<SExpr>),
    Or(Box<SExpr>, Box<SExpr>),
    Cast(Name, Box<SExpr>),
    Alloc(Type),
    Ref { label: Option<Label>, value: Box<SExpr> },
    Deref(Box<SExpr>),
    Assign(Box<SExpr>, Box<SExpr>),
    If(Box<SExpr>, Box<SExpr>, Box<SExpr>),
    Let { var: Name, ty: Type, label: Option<Label>, rhs: Box<SExpr>, body: Box<SExpr> },
    Seq(Box<SExpr>, Box<SExpr>),
    Prove {
        pred: Name,
        pub_binders: Vec<(Name, Type)>,
        sec_binders: Vec<(Name, Type)>,
        body: Box<SExpr>,
        pub_args: Vec<SExpr>,
        sec_args: Vec<SExpr>,
    },
    Verify { proof: Box<SExpr>, pred: Name, publics: Vec<SExpr> },
    InputAssign(Name, Box<SExpr>),
    InputDeref(Name),
    Cnp {
        pred: Name,
        pub_inputs: Vec<(Name, Type)>,
        sec_inputs: Vec<(Name, Type)>,
        pub_given: Vec<(Name, Type, SExpr)>,
        sec_given: Vec<(Name, Type, SExpr)>,
        body: Box<SExpr>,
    },
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    temp: usize,
}

const KEYWORDS: &[&str] = &[
    "class", "extends", "main", "let", "in", "if", "else", "true", "false", "new", "ref",
    "alloc", "prove", "verify", "proves", "using", "exists", "with", "cnp", "given", "pub",
    "sec", "assert", "repeat", "this",
];

const REPEAT_LIMIT: u64 = 4096;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)].0
    }

    fn err_here(&self, msg: impl Into<String>) -> ParseError {
        let (_, line, col) = &self.toks[self.pos];
        ParseError { line: *line, col: *col, msg: msg.into() }
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, want: &Tok) -> Result<(), ParseError> {
        if self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(self.err_here(format!("expected {}, found {}", want, self.peek())))
        }
    }

    fn eat_kw(&mut self, kw: &str) -> Result<(), ParseError> {
        match self.peek() {
            Tok::Ident(s) if s == kw => {
                self.bump();
                Ok(())
            }
            other => Err(self.err_here(format!("expected '{kw}', found {other}"))),
        }
    }

    fn at_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn ident(&mut self) -> Result<Name, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                if KEYWORDS.contains(&s.as_str()) {
                    return Err(self.err_here(format!("'{s}' is a keyword")));
                }
                self.bump();
                Ok(s)
            }
            other => Err(self.err_here(format!("expected identifier, found {other}"))),
        }
    }

    fn fresh(&mut self, prefix: &str) -> Name {
        let n = self.temp;
        self.temp += 1;
        format!("${prefix}{n}")
    }

    fn label(&mut self) -> Result<Label, ParseError> {
        match self.bump() {
            Tok::Ident(s) if s == "C" => Ok(Label::C),
            Tok::Ident(s) if s == "P" => Ok(Label::P),
            Tok::Ident(s) if s == "CP" => Ok(Label::CP),
            other => Err(self.err_here(format!("expected label C, P, or CP, found {other}"))),
        }
    }

    fn ty(&mut self) -> Result<Type, ParseError> {
        match self.bump() {
            Tok::Ident(s) => match s.as_str() {
                "Unit" => Ok(Type::Unit),
                "Bool" => Ok(Type::Bool),
                "Int" => Ok(Type::Int),
                "Ref" => Ok(Type::reference(self.ty()?)),
                "ProofOf" => {
                    let pred = self.ident()?;
                    Ok(Type::ProofOf(pred))
                }
                _ => Ok(Type::Class(s)),
            },
            other => Err(self.err_here(format!("expected type, found {other}"))),
        }
    }

    /// `x : T` pairs separated by commas, ended by the closing token.
    fn binders(&mut self, end: &Tok) -> Result<Vec<(Name, Type)>, ParseError> {
        let mut out = Vec::new();
        while self.peek() != end {
            if !out.is_empty() {
                self.eat(&Tok::Comma)?;
            }
            let x = self.ident()?;
            self.eat(&Tok::Colon)?;
            out.push((x, self.ty()?));
        }
        Ok(out)
    }

    fn args(&mut self, end: Tok, comb: bool) -> Result<Vec<SExpr>, ParseError> {
        let mut out = Vec::new();
        while *self.peek() != end {
            if !out.is_empty() {
                self.eat(&Tok::Comma)?;
            }
            out.push(self.expr(comb)?);
        }
        self.bump();
        Ok(out)
    }

    // Expression grammar, lowest precedence first. `comb` selects combined
    // mode, which admits labels and the computed-input forms.
    fn expr(&mut self, comb: bool) -> Result<SExpr, ParseError> {
        // Statement-like forms that swallow the rest of the block.
        if self.at_kw("let") {
            self.bump();
            let var = match self.peek() {
                Tok::Ident(s) if s == "_" => {
                    self.bump();
                    self.fresh("d")
                }
                _ => self.ident()?,
            };
            self.eat(&Tok::Colon)?;
            let ty = self.ty()?;
            let label = if *self.peek() == Tok::At {
                self.bump();
                Some(self.label()?)
            } else {
                None
            };
            if label.is_some() && !comb {
                return Err(self.err_here("labeled let outside a cnp body"));
            }
            if comb && label.is_none() {
                return Err(self.err_here("let inside a cnp body needs a label, e.g. Int@C"));
            }
            self.eat(&Tok::Eq)?;
            // The right-hand side stops before ';'; parenthesize to sequence.
            let rhs = self.assign_level(comb)?;
            if self.at_kw("in") {
                self.bump();
            } else {
                self.eat(&Tok::Semi)?;
            }
            let body = self.expr(comb)?;
            return Ok(SExpr::Let { var, ty, label, rhs: Box::new(rhs), body: Box::new(body) });
        }
        if self.at_kw("assert") {
            self.bump();
            self.eat(&Tok::LParen)?;
            let cond = self.expr(comb)?;
            self.eat(&Tok::RParen)?;
            self.eat(&Tok::Semi)?;
            let rest = self.expr(comb)?;
            return Ok(SExpr::If(
                Box::new(cond),
                Box::new(rest),
                Box::new(SExpr::Bool(false)),
            ));
        }
        if self.at_kw("repeat") {
            self.bump();
            let n = match self.bump() {
                Tok::Int(n) if n >= 0 => n as u64,
                other => return Err(self.err_here(format!("expected repeat count, found {other}"))),
            };
            if n > REPEAT_LIMIT {
                return Err(self.err_here(format!("repeat count exceeds limit {REPEAT_LIMIT}")));
            }
            self.eat(&Tok::LBrace)?;
            let body = self.expr(comb)?;
            self.eat(&Tok::RBrace)?;
            self.eat(&Tok::Semi)?;
            let rest = self.expr(comb)?;
            let mut out = rest;
            for _ in 0..n {
                out = SExpr::Seq(Box::new(body.clone()), Box::new(out));
            }
            return Ok(out);
        }

        let first = self.assign_level(comb)?;
        if *self.peek() == Tok::Semi {
            self.bump();
            let rest = self.expr(comb)?;
            return Ok(SExpr::Seq(Box::new(first), Box::new(rest)));
        }
        Ok(first)
    }

    fn assign_level(&mut self, comb: bool) -> Result<SExpr, ParseError> {
        // Computed-input assignment: ident <~ expr.
        if comb {
            if let (Tok::Ident(x), Tok::InputArrow) = (self.peek().clone(), self.peek_at(1).clone())
            {
                if !KEYWORDS.contains(&x.as_str()) {
                    self.bump();
                    self.bump();
                    let v = self.or_level(comb)?;
                    return Ok(SExpr::InputAssign(x, Box::new(v)));
                }
            }
        }
        let lhs = self.or_level(comb)?;
        if *self.peek() == Tok::Assign {
            self.bump();
            let rhs = self.or_level(comb)?;
            return Ok(SExpr::Assign(Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn or_level(&mut self, comb: bool) -> Result<SExpr, ParseError> {
        let mut lhs = self.and_level(comb)?;
        while *self.peek() == Tok::OrOr {
            self.bump();
            let rhs = self.and_level(comb)?;
            lhs = SExpr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and_level(&mut self, comb: bool) -> Result<SExpr, ParseError> {
        let mut lhs = self.cmp_level(comb)?;
        while *self.peek() == Tok::AndAnd {
            self.bump();
            let rhs = self.cmp_level(comb)?;
            lhs = SExpr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn cmp_level(&mut self, comb: bool) -> Result<SExpr, ParseError> {
        let lhs = self.add_level(comb)?;
        let op = match self.peek() {
            Tok::EqEq => PrimOp::Eq,
            Tok::Lt => PrimOp::Lt,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.add_level(comb)?;
        Ok(SExpr::Prim(op, Box::new(lhs), Box::new(rhs)))
    }

    fn add_level(&mut self, comb: bool) -> Result<SExpr, ParseError> {
        let mut lhs = self.mul_level(comb)?;
        loop {
            let op = match self.peek() {
                Tok::Plus => PrimOp::Add,
                Tok::Minus => PrimOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.mul_level(comb)?;
            lhs = SExpr::Prim(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn mul_level(&mut self, comb: bool) -> Result<SExpr, ParseError> {
        let mut lhs = self.unary(comb)?;
        while *self.peek() == Tok::Star {
            self.bump();
            let rhs = self.unary(comb)?;
            lhs = SExpr::Prim(PrimOp::Mul, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self, comb: bool) -> Result<SExpr, ParseError> {
        match self.peek() {
            Tok::Bang => {
                self.bump();
                let e = self.unary(comb)?;
                Ok(SExpr::Deref(Box::new(e)))
            }
            Tok::BangBang => {
                self.bump();
                if !comb {
                    return Err(self.err_here("computed-input dereference outside a cnp body"));
                }
                let x = self.ident()?;
                Ok(SExpr::InputDeref(x))
            }
            Tok::Minus => {
                self.bump();
                match self.bump() {
                    Tok::Int(n) => Ok(SExpr::Int(-n)),
                    other => Err(self.err_here(format!("expected integer after '-', found {other}"))),
                }
            }
            _ => self.postfix(comb),
        }
    }

    fn postfix(&mut self, comb: bool) -> Result<SExpr, ParseError> {
        let mut e = self.atom(comb)?;
        loop {
            if *self.peek() != Tok::Dot {
                return Ok(e);
            }
            self.bump();
            let name = self.ident()?;
            let label = if *self.peek() == Tok::At {
                self.bump();
                Some(self.label()?)
            } else {
                None
            };
            if *self.peek() == Tok::LParen || label.is_some() {
                if label.is_some() && !comb {
                    return Err(self.err_here("labeled call outside a cnp body"));
                }
                if comb && label.is_none() {
                    return Err(self.err_here("method call inside a cnp body needs a label"));
                }
                self.eat(&Tok::LParen)?;
                let args = self.args(Tok::RParen, comb)?;
                e = SExpr::Call { recv: Box::new(e), method: name, label, args };
            } else {
                e = SExpr::Field(Box::new(e), name);
            }
        }
    }

    fn atom(&mut self, comb: bool) -> Result<SExpr, ParseError> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(SExpr::Int(n))
            }
            Tok::LParen => {
                self.bump();
                if *self.peek() == Tok::RParen {
                    self.bump();
                    return Ok(SExpr::Unit);
                }
                // `(ClassName) expr` is a cast when the parenthesized name
                // starts uppercase and an expression follows.
                if let (Tok::Ident(s), Tok::RParen) = (self.peek().clone(), self.peek_at(1).clone())
                {
                    let upper = s.chars().next().is_some_and(|c| c.is_ascii_uppercase());
                    if upper && !KEYWORDS.contains(&s.as_str()) && self.starts_atom(2) {
                        self.bump();
                        self.bump();
                        let e = self.unary(comb)?;
                        return Ok(SExpr::Cast(s, Box::new(e)));
                    }
                }
                let e = self.expr(comb)?;
                self.eat(&Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(s) => match s.as_str() {
                "true" => {
                    self.bump();
                    Ok(SExpr::Bool(true))
                }
                "false" => {
                    self.bump();
                    Ok(SExpr::Bool(false))
                }
                "this" => {
                    self.bump();
                    Ok(SExpr::Var("this".into()))
                }
                "new" => {
                    self.bump();
                    let class = self.ident()?;
                    self.eat(&Tok::LParen)?;
                    let args = self.args(Tok::RParen, comb)?;
                    Ok(SExpr::New(class, args))
                }
                "alloc" => {
                    self.bump();
                    Ok(SExpr::Alloc(self.ty()?))
                }
                "ref" => {
                    self.bump();
                    let label = if *self.peek() == Tok::At {
                        self.bump();
                        Some(self.label()?)
                    } else {
                        None
                    };
                    if label.is_some() && !comb {
                        return Err(self.err_here("labeled ref outside a cnp body"));
                    }
                    if comb && label.is_none() {
                        return Err(self.err_here("ref inside a cnp body needs a label, e.g. ref@C"));
                    }
                    let e = self.unary(comb)?;
                    Ok(SExpr::Ref { label, value: Box::new(e) })
                }
                "if" => {
                    self.bump();
                    let guard = self.expr(comb)?;
                    self.eat(&Tok::LBrace)?;
                    let then_branch = self.expr(comb)?;
                    self.eat(&Tok::RBrace)?;
                    self.eat_kw("else")?;
                    self.eat(&Tok::LBrace)?;
                    let else_branch = self.expr(comb)?;
                    self.eat(&Tok::RBrace)?;
                    Ok(SExpr::If(Box::new(guard), Box::new(then_branch), Box::new(else_branch)))
                }
                "prove" => {
                    self.bump();
                    let pred = self.ident()?;
                    self.eat(&Tok::Eq)?;
                    self.eat_kw("exists")?;
                    self.eat(&Tok::LParen)?;
                    let pub_binders = self.binders(&Tok::RParen)?;
                    self.eat(&Tok::RParen)?;
                    self.eat(&Tok::LBracket)?;
                    let sec_binders = self.binders(&Tok::RBracket)?;
                    self.eat(&Tok::RBracket)?;
                    self.eat(&Tok::Dot)?;
                    self.eat(&Tok::LBrace)?;
                    // Predicate bodies are target-language code.
                    let body = self.expr(false)?;
                    self.eat(&Tok::RBrace)?;
                    self.eat_kw("with")?;
                    self.eat(&Tok::LParen)?;
                    let pub_args = self.args(Tok::RParen, comb)?;
                    self.eat(&Tok::LBracket)?;
                    let sec_args = self.args(Tok::RBracket, comb)?;
                    Ok(SExpr::Prove {
                        pred,
                        pub_binders,
                        sec_binders,
                        body: Box::new(body),
                        pub_args,
                        sec_args,
                    })
                }
                "verify" => {
                    self.bump();
                    let proof = self.unary(comb)?;
                    self.eat_kw("proves")?;
                    let pred = self.ident()?;
                    self.eat_kw("using")?;
                    self.eat(&Tok::LParen)?;
                    let publics = self.args(Tok::RParen, comb)?;
                    Ok(SExpr::Verify { proof: Box::new(proof), pred, publics })
                }
                "cnp" => {
                    self.bump();
                    let pred = self.ident()?;
                    self.eat(&Tok::LParen)?;
                    self.eat_kw("pub")?;
                    let pub_inputs = self.binders(&Tok::Semi)?;
                    self.eat(&Tok::Semi)?;
                    self.eat_kw("sec")?;
                    let sec_inputs = self.binders(&Tok::RParen)?;
                    self.eat(&Tok::RParen)?;
                    self.eat_kw("given")?;
                    self.eat(&Tok::LParen)?;
                    let mut pub_given = Vec::new();
                    let mut sec_given = Vec::new();
                    while *self.peek() != Tok::RParen {
                        if !(pub_given.is_empty() && sec_given.is_empty()) {
                            self.eat(&Tok::Comma)?;
                        }
                        let is_pub = if self.at_kw("pub") {
                            true
                        } else if self.at_kw("sec") {
                            false
                        } else {
                            return Err(self.err_here("expected 'pub' or 'sec' binding"));
                        };
                        self.bump();
                        let y = self.ident()?;
                        self.eat(&Tok::Colon)?;
                        let t = self.ty()?;
                        self.eat(&Tok::Eq)?;
                        // Given values are evaluated outside the block.
                        let v = self.or_level(comb)?;
                        if is_pub {
                            pub_given.push((y, t, v));
                        } else {
                            sec_given.push((y, t, v));
                        }
                    }
                    self.eat(&Tok::RParen)?;
                    self.eat(&Tok::LBrace)?;
                    let body = self.expr(true)?;
                    self.eat(&Tok::RBrace)?;
                    Ok(SExpr::Cnp {
                        pred,
                        pub_inputs,
                        sec_inputs,
                        pub_given,
                        sec_given,
                        body: Box::new(body),
                    })
                }
                _ => {
                    let name = self.ident()?;
                    Ok(SExpr::Var(name))
                }
            },
            other => Err(self.err_here(format!("expected expression, found {other}"))),
        }
    }

    /// Could the token at offset `n` begin an atom? Used to disambiguate casts.
    fn starts_atom(&self, n: usize) -> bool {
        matches!(
            self.peek_at(n),
            Tok::Ident(_) | Tok::Int(_) | Tok::LParen | Tok::Bang | Tok::BangBang | Tok::Minus
        )
    }

    // -----------------------------------------------------------------------
    // Declarations

    fn class_decl(&mut self) -> Result<ClassDecl, ParseError> {
        self.eat_kw("class")?;
        let name = self.ident()?;
        let parent = if self.at_kw("extends") {
            self.bump();
            self.ident()?
        } else {
            OBJECT.to_string()
        };
        let aware = if *self.peek() == Tok::At {
            self.bump();
            Some(self.label()?)
        } else {
            None
        };
        self.eat(&Tok::LBrace)?;
        let mut fields = Vec::new();
        let mut methods = Vec::new();
        while *self.peek() != Tok::RBrace {
            let member = self.ident()?;
            match self.peek() {
                Tok::Colon => {
                    self.bump();
                    let t = self.ty()?;
                    self.eat(&Tok::Semi)?;
                    fields.push((member, t));
                }
                _ => {
                    let label = if *self.peek() == Tok::At {
                        self.bump();
                        self.label()?
                    } else {
                        Label::C
                    };
                    self.eat(&Tok::LParen)?;
                    let params = self.binders(&Tok::RParen)?;
                    self.eat(&Tok::RParen)?;
                    self.eat(&Tok::Colon)?;
                    let ret = self.ty()?;
                    self.eat(&Tok::LBrace)?;
                    let body = self.expr(false)?;
                    self.eat(&Tok::RBrace)?;
                    let body = self.lower_core(&body);
                    methods.push(Method { name: member, label, params, ret, body });
                }
            }
        }
        self.eat(&Tok::RBrace)?;
        Ok(ClassDecl { name, parent, aware, fields, methods })
    }

    fn program(&mut self) -> Result<Program, ParseError> {
        let mut classes = Vec::new();
        while self.at_kw("class") {
            classes.push(self.class_decl()?);
        }
        self.eat_kw("main")?;
        self.eat(&Tok::LBrace)?;
        let main = self.expr(false)?;
        self.eat(&Tok::RBrace)?;
        let main = self.lower_core(&main);
        if *self.peek() != Tok::Eof {
            return Err(self.err_here(format!("expected end of input, found {}", self.peek())));
        }
        Ok(Program { classes, main })
    }

    // -----------------------------------------------------------------------
    // Lowering to A-normal form

    fn lower_core(&mut self, s: &SExpr) -> Expr {
        let mut pre = Vec::new();
        let e = self.lower_core_tail(s, &mut pre);
        wrap_core(pre, e)
    }

    /// Lower `s` to a spine expression, pushing bindings for hoisted subterms.
    fn lower_core_tail(&mut self, s: &SExpr, pre: &mut Vec<(Name, Expr)>) -> Expr {
        match s {
            SExpr::Let { var, ty, label: _, rhs, body } => {
                let rhs = self.lower_core(rhs);
                let body = self.lower_core(body);
                Expr::Let {
                    var: var.clone(),
                    ty: ty.clone(),
                    rhs: Box::new(rhs),
                    body: Box::new(body),
                }
            }
            SExpr::Seq(a, b) => {
                let a = self.lower_core(a);
                let b = self.lower_core(b);
                Expr::Let {
                    var: self.fresh("t"),
                    ty: Type::Unit,
                    rhs: Box::new(a),
                    body: Box::new(b),
                }
            }
            SExpr::If(g, a, b) => {
                let g = self.lower_core_value(g, pre);
                Expr::If {
                    guard: g,
                    then_branch: Box::new(self.lower_core(a)),
                    else_branch: Box::new(self.lower_core(b)),
                }
            }
            SExpr::And(a, b) => self.lower_core_tail(
                &SExpr::If(a.clone(), b.clone(), Box::new(SExpr::Bool(false))),
                pre,
            ),
            SExpr::Or(a, b) => self.lower_core_tail(
                &SExpr::If(a.clone(), Box::new(SExpr::Bool(true)), b.clone()),
                pre,
            ),
            SExpr::Var(_) | SExpr::Unit | SExpr::Bool(_) | SExpr::Int(_) | SExpr::New(..) => {
                Expr::Val(self.lower_core_value(s, pre))
            }
            SExpr::Field(e, f) => {
                let v = self.lower_core_value(e, pre);
                Expr::Field { value: v, field: f.clone() }
            }
            SExpr::Call { recv, method, label: _, args } => {
                let recv = self.lower_core_value(recv, pre);
                let args = args.iter().map(|a| self.lower_core_value(a, pre)).collect();
                Expr::Call { recv, method: method.clone(), args }
            }
            SExpr::Prim(op, a, b) => {
                let a = self.lower_core_value(a, pre);
                let b = self.lower_core_value(b, pre);
                Expr::Prim { op: *op, args: vec![a, b] }
            }
            SExpr::Cast(c, e) => {
                let v = self.lower_core_value(e, pre);
                Expr::Cast { class: c.clone(), value: v }
            }
            SExpr::Alloc(t) => Expr::Alloc { ty: t.clone() },
            SExpr::Ref { label: _, value } => {
                let v = self.lower_core_value(value, pre);
                Expr::Ref { value: v }
            }
            SExpr::Deref(e) => {
                let v = self.lower_core_value(e, pre);
                Expr::Deref { value: v }
            }
            SExpr::Assign(t, v) => {
                let t = self.lower_core_value(t, pre);
                let v = self.lower_core_value(v, pre);
                Expr::Assign { target: t, value: v }
            }
            SExpr::Prove { pred, pub_binders, sec_binders, body, pub_args, sec_args } => {
                let body = self.lower_core(body);
                let pub_args = pub_args.iter().map(|a| self.lower_core_value(a, pre)).collect();
                let sec_args = sec_args.iter().map(|a| self.lower_core_value(a, pre)).collect();
                Expr::Prove(ProveForm {
                    pred: pred.clone(),
                    pub_binders: pub_binders.clone(),
                    sec_binders: sec_binders.clone(),
                    body: Box::new(body),
                    pub_args,
                    sec_args,
                })
            }
            SExpr::Verify { proof, pred, publics } => {
                let proof = self.lower_core_value(proof, pre);
                let publics = publics.iter().map(|a| self.lower_core_value(a, pre)).collect();
                Expr::Verify { proof, pred: pred.clone(), publics }
            }
            SExpr::Cnp { .. } => Expr::Cnp(self.lower_cnp(s, pre)),
            SExpr::InputAssign(..) | SExpr::InputDeref(_) => {
                unreachable!("input forms are rejected outside combined mode")
            }
        }
    }

    fn lower_core_value(&mut self, s: &SExpr, pre: &mut Vec<(Name, Expr)>) -> Value {
        match s {
            SExpr::Var(x) => Value::Var(x.clone()),
            SExpr::Unit => Value::Unit,
            SExpr::Bool(b) => Value::Bool(*b),
            SExpr::Int(n) => Value::Int(*n),
            SExpr::New(c, args) => {
                let vals = args.iter().map(|a| self.lower_core_value(a, pre)).collect();
                Value::New(c.clone(), vals)
            }
            other => {
                let e = {
                    let mut inner = Vec::new();
                    let tail = self.lower_core_tail(other, &mut inner);
                    wrap_core(inner, tail)
                };
                let tmp = self.fresh("t");
                pre.push((tmp.clone(), e));
                Value::Var(tmp)
            }
        }
    }

    fn lower_cnp(&mut self, s: &SExpr, pre: &mut Vec<(Name, Expr)>) -> CnpBlock {
        let SExpr::Cnp { pred, pub_inputs, sec_inputs, pub_given, sec_given, body } = s else {
            unreachable!()
        };
        let pub_given = pub_given
            .iter()
            .map(|(y, t, v)| (y.clone(), t.clone(), self.lower_core_value(v, pre)))
            .collect();
        let sec_given = sec_given
            .iter()
            .map(|(y, t, v)| (y.clone(), t.clone(), self.lower_core_value(v, pre)))
            .collect();
        let body = self.lower_comb(body);
        CnpBlock {
            pred: pred.clone(),
            pub_inputs: pub_inputs.clone(),
            sec_inputs: sec_inputs.clone(),
            pub_given,
            sec_given,
            body: Box::new(body),
        }
    }

    fn lower_comb(&mut self, s: &SExpr) -> CombExpr {
        let mut pre = Vec::new();
        let e = self.lower_comb_tail(s, &mut pre);
        wrap_comb(pre, e)
    }

    fn lower_comb_tail(&mut self, s: &SExpr, pre: &mut Vec<(Name, CombExpr)>) -> CombExpr {
        match s {
            SExpr::Let { var, ty, label, rhs, body } => {
                let rhs = self.lower_comb(rhs);
                let body = self.lower_comb(body);
                CombExpr::Let {
                    var: var.clone(),
                    ty: ty.clone(),
                    label: label.expect("combined let carries a label"),
                    rhs: Box::new(rhs),
                    body: Box::new(body),
                }
            }
            SExpr::Seq(a, b) => {
                let a = self.lower_comb(a);
                let b = self.lower_comb(b);
                CombExpr::Let {
                    var: self.fresh("t"),
                    ty: Type::Unit,
                    label: Label::CP,
                    rhs: Box::new(a),
                    body: Box::new(b),
                }
            }
            SExpr::If(g, a, b) => {
                let g = self.lower_comb_value(g, pre);
                CombExpr::If {
                    guard: g,
                    then_branch: Box::new(self.lower_comb(a)),
                    else_branch: Box::new(self.lower_comb(b)),
                }
            }
            SExpr::And(a, b) => self.lower_comb_tail(
                &SExpr::If(a.clone(), b.clone(), Box::new(SExpr::Bool(false))),
                pre,
            ),
            SExpr::Or(a, b) => self.lower_comb_tail(
                &SExpr::If(a.clone(), Box::new(SExpr::Bool(true)), b.clone()),
                pre,
            ),
            SExpr::Var(_) | SExpr::Unit | SExpr::Bool(_) | SExpr::Int(_) | SExpr::New(..) => {
                CombExpr::Val(self.lower_comb_value(s, pre))
            }
            SExpr::Field(e, f) => {
                let v = self.lower_comb_value(e, pre);
                CombExpr::Field { value: v, field: f.clone() }
            }
            SExpr::Call { recv, method, label, args } => {
                let recv = self.lower_comb_value(recv, pre);
                let args = args.iter().map(|a| self.lower_comb_value(a, pre)).collect();
                CombExpr::Call {
                    recv,
                    method: method.clone(),
                    label: label.expect("combined call carries a label"),
                    args,
                }
            }
            SExpr::Prim(op, a, b) => {
                let a = self.lower_comb_value(a, pre);
                let b = self.lower_comb_value(b, pre);
                CombExpr::Prim { op: *op, args: vec![a, b] }
            }
            SExpr::Cast(c, e) => {
                let v = self.lower_comb_value(e, pre);
                CombExpr::Cast { class: c.clone(), value: v }
            }
            SExpr::Alloc(t) => CombExpr::Alloc { ty: t.clone() },
            SExpr::Ref { label, value } => {
                let v = self.lower_comb_value(value, pre);
                CombExpr::Ref { label: label.expect("combined ref carries a label"), value: v }
            }
            SExpr::Deref(e) => {
                let v = self.lower_comb_value(e, pre);
                CombExpr::Deref { value: v }
            }
            SExpr::Assign(t, v) => {
                let t = self.lower_comb_value(t, pre);
                let v = self.lower_comb_value(v, pre);
                CombExpr::Assign { target: t, value: v }
            }
            SExpr::Prove { pred, pub_binders, sec_binders, body, pub_args, sec_args } => {
                let body = self.lower_core(body);
                let pub_args = pub_args.iter().map(|a| self.lower_comb_value(a, pre)).collect();
                let sec_args = sec_args.iter().map(|a| self.lower_comb_value(a, pre)).collect();
                CombExpr::Prove(ProveForm {
                    pred: pred.clone(),
                    pub_binders: pub_binders.clone(),
                    sec_binders: sec_binders.clone(),
                    body: Box::new(body),
                    pub_args,
                    sec_args,
                })
            }
            SExpr::Verify { proof, pred, publics } => {
                let proof = self.lower_comb_value(proof, pre);
                let publics = publics.iter().map(|a| self.lower_comb_value(a, pre)).collect();
                CombExpr::Verify { proof, pred: pred.clone(), publics }
            }
            SExpr::InputAssign(x, v) => {
                let v = self.lower_comb_value(v, pre);
                CombExpr::InputAssign { var: x.clone(), value: v }
            }
            SExpr::InputDeref(x) => CombExpr::InputDeref { var: x.clone() },
            SExpr::Cnp { .. } => {
                // A nested block: its given values are hoisted in combined mode.
                let SExpr::Cnp { pred, pub_inputs, sec_inputs, pub_given, sec_given, body } = s
                else {
                    unreachable!()
                };
                let pub_given = pub_given
                    .iter()
                    .map(|(y, t, v)| (y.clone(), t.clone(), self.lower_comb_value(v, pre)))
                    .collect();
                let sec_given = sec_given
                    .iter()
                    .map(|(y, t, v)| (y.clone(), t.clone(), self.lower_comb_value(v, pre)))
                    .collect();
                let body = self.lower_comb(body);
                CombExpr::Cnp(CnpBlock {
                    pred: pred.clone(),
                    pub_inputs: pub_inputs.clone(),
                    sec_inputs: sec_inputs.clone(),
                    pub_given,
                    sec_given,
                    body: Box::new(body),
                })
            }
        }
    }

    fn lower_comb_value(&mut self, s: &SExpr, pre: &mut Vec<(Name, CombExpr)>) -> Value {
        match s {
            SExpr::Var(x) => Value::Var(x.clone()),
            SExpr::Unit => Value::Unit,
            SExpr::Bool(b) => Value::Bool(*b),
            SExpr::Int(n) => Value::Int(*n),
            SExpr::New(c, args) => {
                let vals = args.iter().map(|a| self.lower_comb_value(a, pre)).collect();
                Value::New(c.clone(), vals)
            }
            other => {
                let e = {
                    let mut inner = Vec::new();
                    let tail = self.lower_comb_tail(other, &mut inner);
                    wrap_comb(inner, tail)
                };
                let tmp = self.fresh("t");
                pre.push((tmp.clone(), e));
                Value::Var(tmp)
            }
        }
    }
}

fn wrap_core(pre: Vec<(Name, Expr)>, tail: Expr) -> Expr {
    pre.into_iter().rev().fold(tail, |acc, (var, rhs)| Expr::Let {
        var,
        ty: Type::Unit,
        rhs: Box::new(rhs),
        body: Box::new(acc),
    })
}

fn wrap_comb(pre: Vec<(Name, CombExpr)>, tail: CombExpr) -> CombExpr {
    pre.into_iter().rev().fold(tail, |acc, (var, rhs)| CombExpr::Let {
        var,
        ty: Type::Unit,
        label: Label::CP,
        rhs: Box::new(rhs),
        body: Box::new(acc),
    })
}

pub fn parse_program(src: &str) -> Result<Program, ParseError> {
    let toks = Lexer::new(src).lex()?;
    let mut p = Parser { toks, pos: 0, temp: 0 };
    p.program()
}

/// Parse a bare expression in target mode; used by tests and the generator.
pub fn parse_expr(src: &str) -> Result<Expr, ParseError> {
    let toks = Lexer::new(src).lex()?;
    let mut p = Parser { toks, pos: 0, temp: 0 };
    let s = p.expr(false)?;
    if *p.peek() != Tok::Eof {
        return Err(p.err_here(format!("expected end of input, found {}", p.peek())));
    }
    Ok(p.lower_core(&s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_let_chain() {
        let e = parse_expr("let x : Int = 3; let y : Int = x + 1; y * y").unwrap();
        match &e {
            Expr::Let { var, ty, .. } => {
                assert_eq!(var, "x");
                assert_eq!(*ty, Type::Int);
            }
            _ => panic!("{e:?}"),
        }
    }

    #[test]
    fn hoists_nested_calls() {
        let e = parse_expr("let r : Int = (1 + 2) * 3; r").unwrap();
        // The inner addition must be hoisted into a $t binder.
        let printed = e.to_string();
        assert!(printed.contains("$t"), "{printed}");
    }

    #[test]
    fn sequencing_discards_into_temp() {
        let e = parse_expr("let c : Ref Int = ref 0; c := 1; !c").unwrap();
        let printed = e.to_string();
        assert!(printed.contains("c := 1"), "{printed}");
    }

    #[test]
    fn assert_desugars_to_if_false() {
        // The guard is hoisted, leaving a let around the conditional.
        let e = parse_expr("assert(1 < 2); true").unwrap();
        match e {
            Expr::Let { body, .. } => match *body {
                Expr::If { else_branch, .. } => {
                    assert_eq!(*else_branch, Expr::Val(Value::Bool(false)));
                }
                other => panic!("{other:?}"),
            },
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn repeat_unrolls() {
        let e = parse_expr("let c : Ref Int = ref 0; repeat 3 { c := 1 }; !c").unwrap();
        let printed = e.to_string();
        assert_eq!(printed.matches("c := 1").count(), 3, "{printed}");
    }

    #[test]
    fn parses_classes_and_main() {
        let src = "
            class Pt extends Object {
                x : Int;
                y : Int;
                sum@CP() : Int { this.x + this.y }
            }
            main {
                let p : Pt = new Pt(1, 2);
                p.sum()
            }
        ";
        let prog = parse_program(src).unwrap();
        assert_eq!(prog.classes.len(), 1);
        assert_eq!(prog.classes[0].methods[0].label, Label::CP);
    }

    #[test]
    fn parses_cnp_with_input_forms() {
        let src = "
            main {
                let pf : ProofOf even = cnp even (pub half : Int; sec seed : Int)
                    given (pub n : Int = 6, sec w : Int = 3) {
                    half <~ w;
                    seed <~ 1;
                    let h : Int@CP = !!half;
                    h + h == n
                };
                verify pf proves even using (6, 3)
            }
        ";
        let prog = parse_program(src).unwrap();
        let printed = prog.main.to_string();
        assert!(printed.contains("half <~"), "{printed}");
        assert!(printed.contains("!!half"), "{printed}");
    }

    #[test]
    fn parses_prove_and_cast() {
        let src = "main {
            let p : ProofOf pos = prove pos = exists (x : Int)[w : Int]. { w < x } with (5)[2];
            let o : Object = (Object) new Object();
            verify p proves pos using (5)
        }";
        let prog = parse_program(src).unwrap();
        assert!(prog.main.to_string().contains("prove pos"));
    }

    #[test]
    fn labeled_forms_rejected_outside_cnp() {
        assert!(parse_expr("let x : Int@C = 3; x").is_err());
        assert!(parse_expr("ref@C 3").is_err());
        assert!(parse_expr("!!x").is_err());
    }

    #[test]
    fn combined_let_requires_label() {
        let src = "main { cnp a (pub x : Int; sec y : Int) given () { let z : Int = 1; true } }";
        assert!(parse_program(src).is_err());
    }

    #[test]
    fn cast_vs_parens() {
        let e = parse_expr("let x : Int = (1 + 2); x").unwrap();
        assert!(!e.to_string().contains("cast"));
        let prog = parse_expr("(Object) new Object()").unwrap();
        match prog {
            Expr::Cast { class, .. } => assert_eq!(class, "Object"),
            other => panic!("{other:?}"),
        }
    }
}
