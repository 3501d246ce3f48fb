//! Expression AST and parser.
//!
//! Grammar (ASCII, case-sensitive function names):
//!
//! ```text
//! sum     := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?      exponent must fold to an integer
//! primary := number | ident | ident '(' sum ')' | '(' sum ')'
//! ```
//!
//! `^` binds tighter than unary minus, so `-u^2` is `-(u^2)`. Exponents are
//! restricted to constant integers; general powers are written
//! `exp(b*log(a))`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use thiserror::Error;

/// Unary functions known to the evaluator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryFn {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
}

impl UnaryFn {
    pub fn name(self) -> &'static str {
        match self {
            UnaryFn::Sin => "sin",
            UnaryFn::Cos => "cos",
            UnaryFn::Tan => "tan",
            UnaryFn::Exp => "exp",
            UnaryFn::Log => "log",
            UnaryFn::Sqrt => "sqrt",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => UnaryFn::Sin,
            "cos" => UnaryFn::Cos,
            "tan" => UnaryFn::Tan,
            "exp" => UnaryFn::Exp,
            "log" => UnaryFn::Log,
            "sqrt" => UnaryFn::Sqrt,
            _ => return None,
        })
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            UnaryFn::Sin => x.sin(),
            UnaryFn::Cos => x.cos(),
            UnaryFn::Tan => x.tan(),
            UnaryFn::Exp => x.exp(),
            UnaryFn::Log => x.ln(),
            UnaryFn::Sqrt => x.sqrt(),
        }
    }
}

/// Expression tree over an ordered variable list. Variables are stored by
/// index into the list the expression was parsed against.
#[derive(Debug, Clone, PartialEq)]
pub enum ExprNode {
    Const(f64),
    Var(usize),
    Add(Box<ExprNode>, Box<ExprNode>),
    Sub(Box<ExprNode>, Box<ExprNode>),
    Mul(Box<ExprNode>, Box<ExprNode>),
    Div(Box<ExprNode>, Box<ExprNode>),
    /// Integer power of the base. Non-integer exponents are a parse error.
    Pow(Box<ExprNode>, i32),
    Neg(Box<ExprNode>),
    Unary(UnaryFn, Box<ExprNode>),
}

impl ExprNode {
    pub fn constant(v: f64) -> Self {
        ExprNode::Const(v)
    }

    pub fn var(index: usize) -> Self {
        ExprNode::Var(index)
    }

    pub fn zero() -> Self {
        ExprNode::Const(0.0)
    }

    /// Largest variable index used, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            ExprNode::Const(_) => None,
            ExprNode::Var(i) => Some(*i),
            ExprNode::Add(a, b)
            | ExprNode::Sub(a, b)
            | ExprNode::Mul(a, b)
            | ExprNode::Div(a, b) => match (a.max_var(), b.max_var()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
            ExprNode::Pow(a, _) | ExprNode::Neg(a) | ExprNode::Unary(_, a) => a.max_var(),
        }
    }

    /// Fold to a constant if the expression contains no variables and the
    /// evaluation is finite. Used for exponent folding only.
    fn fold_const(&self) -> Option<f64> {
        let v = match self {
            ExprNode::Const(v) => *v,
            ExprNode::Var(_) => return None,
            ExprNode::Add(a, b) => a.fold_const()? + b.fold_const()?,
            ExprNode::Sub(a, b) => a.fold_const()? - b.fold_const()?,
            ExprNode::Mul(a, b) => a.fold_const()? * b.fold_const()?,
            ExprNode::Div(a, b) => a.fold_const()? / b.fold_const()?,
            ExprNode::Pow(a, n) => a.fold_const()?.powi(*n),
            ExprNode::Neg(a) => -a.fold_const()?,
            ExprNode::Unary(f, a) => f.apply(a.fold_const()?),
        };
        v.is_finite().then_some(v)
    }

    fn precedence(&self) -> u8 {
        match self {
            ExprNode::Add(..) | ExprNode::Sub(..) => 1,
            ExprNode::Mul(..) | ExprNode::Div(..) => 2,
            ExprNode::Neg(..) => 3,
            ExprNode::Pow(..) => 4,
            _ => 5,
        }
    }
}

impl Add for ExprNode {
    type Output = ExprNode;
    fn add(self, rhs: ExprNode) -> ExprNode {
        ExprNode::Add(Box::new(self), Box::new(rhs))
    }
}

impl Sub for ExprNode {
    type Output = ExprNode;
    fn sub(self, rhs: ExprNode) -> ExprNode {
        ExprNode::Sub(Box::new(self), Box::new(rhs))
    }
}

impl Mul for ExprNode {
    type Output = ExprNode;
    fn mul(self, rhs: ExprNode) -> ExprNode {
        ExprNode::Mul(Box::new(self), Box::new(rhs))
    }
}

impl Neg for ExprNode {
    type Output = ExprNode;
    fn neg(self) -> ExprNode {
        ExprNode::Neg(Box::new(self))
    }
}

impl fmt::Display for ExprNode {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn wrap(out: &mut fmt::Formatter<'_>, e: &ExprNode, min_prec: u8) -> fmt::Result {
            if e.precedence() < min_prec {
                write!(out, "({e})")
            } else {
                write!(out, "{e}")
            }
        }
        match self {
            ExprNode::Const(v) => write!(out, "{v}"),
            ExprNode::Var(i) => write!(out, "x{i}"),
            ExprNode::Add(a, b) => {
                wrap(out, a, 1)?;
                write!(out, "+")?;
                wrap(out, b, 2)
            }
            ExprNode::Sub(a, b) => {
                wrap(out, a, 1)?;
                write!(out, "-")?;
                wrap(out, b, 2)
            }
            ExprNode::Mul(a, b) => {
                wrap(out, a, 2)?;
                write!(out, "*")?;
                wrap(out, b, 3)
            }
            ExprNode::Div(a, b) => {
                wrap(out, a, 2)?;
                write!(out, "/")?;
                wrap(out, b, 3)
            }
            ExprNode::Pow(a, n) => {
                wrap(out, a, 5)?;
                if *n < 0 {
                    write!(out, "^({n})")
                } else {
                    write!(out, "^{n}")
                }
            }
            ExprNode::Neg(a) => {
                write!(out, "-")?;
                wrap(out, a, 3)
            }
            ExprNode::Unary(f, a) => write!(out, "{}({a})", f.name()),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("empty expression")]
    EmptyInput,
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("unknown function `{name}` at offset {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("unbalanced parentheses at offset {offset}")]
    UnbalancedParens { offset: usize },
    #[error("empty operand at offset {offset}")]
    EmptyOperand { offset: usize },
    #[error("invalid number at offset {offset}")]
    InvalidNumber { offset: usize },
    #[error("unexpected character `{ch}` at offset {offset}")]
    UnexpectedChar { ch: char, offset: usize },
    #[error("unexpected token at offset {offset}")]
    UnexpectedToken { offset: usize },
    #[error("exponent at offset {offset} must fold to a constant integer")]
    NonIntegerExponent { offset: usize },
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

#[derive(Debug, Clone, PartialEq)]
struct Token {
    kind: TokenKind,
    offset: usize,
}

fn tokenize(input: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = input.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        let offset = i;
        match b {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'+' | b'-' | b'*' | b'/' | b'^' | b'(' | b')' => {
                let kind = match b {
                    b'+' => TokenKind::Plus,
                    b'-' => TokenKind::Minus,
                    b'*' => TokenKind::Star,
                    b'/' => TokenKind::Slash,
                    b'^' => TokenKind::Caret,
                    b'(' => TokenKind::LParen,
                    _ => TokenKind::RParen,
                };
                toks.push(Token { kind, offset });
                i += 1;
            }
            b'0'..=b'9' => {
                let mut j = i;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                if j < bytes.len() && bytes[j] == b'.' {
                    j += 1;
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                }
                if j < bytes.len() && (bytes[j] == b'e' || bytes[j] == b'E') {
                    let mut k = j + 1;
                    if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                        k += 1;
                    }
                    if k < bytes.len() && bytes[k].is_ascii_digit() {
                        j = k;
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                    }
                }
                let text = &input[i..j];
                let value: f64 = text
                    .parse()
                    .map_err(|_| ParseError::InvalidNumber { offset })?;
                toks.push(Token {
                    kind: TokenKind::Num(value),
                    offset,
                });
                i = j;
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let mut j = i;
                while j < bytes.len()
                    && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_')
                {
                    j += 1;
                }
                toks.push(Token {
                    kind: TokenKind::Ident(input[i..j].to_string()),
                    offset,
                });
                i = j;
            }
            _ => {
                return Err(ParseError::UnexpectedChar {
                    ch: input[i..].chars().next().unwrap(),
                    offset,
                })
            }
        }
    }
    Ok(toks)
}

struct Parser<'a> {
    toks: Vec<Token>,
    pos: usize,
    depth: usize,
    end: usize,
    vars: &'a [String],
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn missing_operand(&self) -> ParseError {
        // EOF inside an open parenthesis reads as an unclosed group rather
        // than a missing operand.
        if self.depth > 0 {
            ParseError::UnbalancedParens { offset: self.end }
        } else {
            ParseError::EmptyOperand { offset: self.end }
        }
    }

    fn parse_sum(&mut self) -> Result<ExprNode, ParseError> {
        let mut lhs = self.parse_term()?;
        while let Some(tok) = self.peek() {
            let op = match tok.kind {
                TokenKind::Plus => true,
                TokenKind::Minus => false,
                _ => break,
            };
            self.bump();
            let rhs = self.parse_term()?;
            lhs = if op {
                ExprNode::Add(Box::new(lhs), Box::new(rhs))
            } else {
                ExprNode::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn parse_term(&mut self) -> Result<ExprNode, ParseError> {
        let mut lhs = self.parse_unary()?;
        while let Some(tok) = self.peek() {
            let mul = match tok.kind {
                TokenKind::Star => true,
                TokenKind::Slash => false,
                _ => break,
            };
            self.bump();
            let rhs = self.parse_unary()?;
            lhs = if mul {
                ExprNode::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                ExprNode::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn parse_unary(&mut self) -> Result<ExprNode, ParseError> {
        if matches!(self.peek().map(|t| &t.kind), Some(TokenKind::Minus)) {
            self.bump();
            let inner = self.parse_unary()?;
            return Ok(ExprNode::Neg(Box::new(inner)));
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> Result<ExprNode, ParseError> {
        let base = self.parse_primary()?;
        if matches!(self.peek().map(|t| &t.kind), Some(TokenKind::Caret)) {
            let caret_offset = self.peek().unwrap().offset;
            self.bump();
            let exp_offset = self.peek().map(|t| t.offset).unwrap_or(self.end);
            let exp = self.parse_unary()?;
            let folded = exp
                .fold_const()
                .ok_or(ParseError::NonIntegerExponent { offset: exp_offset })?;
            let rounded = folded.round();
            if (folded - rounded).abs() > 1e-9 || rounded.abs() > i32::MAX as f64 {
                return Err(ParseError::NonIntegerExponent { offset: exp_offset });
            }
            let _ = caret_offset;
            return Ok(ExprNode::Pow(Box::new(base), rounded as i32));
        }
        Ok(base)
    }

    fn parse_primary(&mut self) -> Result<ExprNode, ParseError> {
        let tok = match self.bump() {
            Some(t) => t,
            None => return Err(self.missing_operand()),
        };
        match tok.kind {
            TokenKind::Num(v) => Ok(ExprNode::Const(v)),
            TokenKind::Ident(name) => {
                if matches!(self.peek().map(|t| &t.kind), Some(TokenKind::LParen)) {
                    let func = UnaryFn::from_name(&name).ok_or(ParseError::UnknownFunction {
                        name: name.clone(),
                        offset: tok.offset,
                    })?;
                    self.bump();
                    self.depth += 1;
                    let arg = self.parse_sum()?;
                    self.expect_rparen()?;
                    Ok(ExprNode::Unary(func, Box::new(arg)))
                } else if let Some(idx) = self.vars.iter().position(|v| v == &name) {
                    Ok(ExprNode::Var(idx))
                } else {
                    Err(ParseError::UnknownIdentifier {
                        name,
                        offset: tok.offset,
                    })
                }
            }
            TokenKind::LParen => {
                self.depth += 1;
                let inner = self.parse_sum()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            TokenKind::RParen => {
                if self.depth > 0 {
                    Err(ParseError::EmptyOperand { offset: tok.offset })
                } else {
                    Err(ParseError::UnbalancedParens { offset: tok.offset })
                }
            }
            _ => Err(ParseError::EmptyOperand { offset: tok.offset }),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        match self.bump() {
            Some(Token {
                kind: TokenKind::RParen,
                ..
            }) => {
                self.depth -= 1;
                Ok(())
            }
            Some(tok) => Err(ParseError::UnbalancedParens { offset: tok.offset }),
            None => Err(ParseError::UnbalancedParens { offset: self.end }),
        }
    }
}

/// Parse an expression over the given ordered variable names.
pub fn parse_expr(text: &str, variables: &[String]) -> Result<ExprNode, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::EmptyInput);
    }
    let toks = tokenize(text)?;
    let mut parser = Parser {
        toks,
        pos: 0,
        depth: 0,
        end: text.len(),
        vars: variables,
    };
    let expr = parser.parse_sum()?;
    if let Some(tok) = parser.peek() {
        return Err(match tok.kind {
            TokenKind::RParen => ParseError::UnbalancedParens { offset: tok.offset },
            _ => ParseError::UnexpectedToken { offset: tok.offset },
        });
    }
    Ok(expr)
}

/// Convenience wrapper taking `&str` variable names.
pub fn parse_expr_named(text: &str, variables: &[&str]) -> Result<ExprNode, ParseError> {
    let vars: Vec<String> = variables.iter().map(|s| s.to_string()).collect();
    parse_expr(text, &vars)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars5() -> Vec<String> {
        ["u", "v", "w", "t", "z"].iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parses_sum_of_variables() {
        let e = parse_expr("u+v", &vars5()).unwrap();
        assert_eq!(
            e,
            ExprNode::Add(Box::new(ExprNode::Var(0)), Box::new(ExprNode::Var(1)))
        );
    }

    #[test]
    fn parses_product_with_function_call() {
        let e = parse_expr("t*cos(w)", &vars5()).unwrap();
        assert_eq!(
            e,
            ExprNode::Mul(
                Box::new(ExprNode::Var(3)),
                Box::new(ExprNode::Unary(UnaryFn::Cos, Box::new(ExprNode::Var(2))))
            )
        );
    }

    #[test]
    fn unclosed_call_is_unbalanced_at_end() {
        let err = parse_expr("sin(", &vars5()).unwrap_err();
        assert_eq!(err, ParseError::UnbalancedParens { offset: 4 });
    }

    #[test]
    fn unclosed_group_is_unbalanced_at_end() {
        let err = parse_expr("(u+v", &vars5()).unwrap_err();
        assert_eq!(err, ParseError::UnbalancedParens { offset: 4 });
    }

    #[test]
    fn stray_close_paren() {
        let err = parse_expr("u+v)", &vars5()).unwrap_err();
        assert_eq!(err, ParseError::UnbalancedParens { offset: 3 });
    }

    #[test]
    fn trailing_operator_is_empty_operand() {
        let err = parse_expr("u+", &vars5()).unwrap_err();
        assert_eq!(err, ParseError::EmptyOperand { offset: 2 });
    }

    #[test]
    fn empty_call_argument() {
        let err = parse_expr("sin()", &vars5()).unwrap_err();
        assert_eq!(err, ParseError::EmptyOperand { offset: 4 });
    }

    #[test]
    fn unknown_identifier_carries_offset() {
        let err = parse_expr("u+q", &vars5()).unwrap_err();
        assert_eq!(
            err,
            ParseError::UnknownIdentifier {
                name: "q".into(),
                offset: 2
            }
        );
    }

    #[test]
    fn unknown_function_name() {
        let err = parse_expr("t(u)", &vars5()).unwrap_err();
        assert_eq!(
            err,
            ParseError::UnknownFunction {
                name: "t".into(),
                offset: 0
            }
        );
    }

    #[test]
    fn power_binds_tighter_than_unary_minus() {
        // -u^2 must be -(u^2)
        let e = parse_expr("-u^2", &vars5()).unwrap();
        assert_eq!(
            e,
            ExprNode::Neg(Box::new(ExprNode::Pow(Box::new(ExprNode::Var(0)), 2)))
        );
    }

    #[test]
    fn power_is_right_associative_and_folds() {
        let e = parse_expr("2^3^2", &vars5()).unwrap();
        assert_eq!(e, ExprNode::Pow(Box::new(ExprNode::Const(2.0)), 9));
    }

    #[test]
    fn negative_integer_exponent() {
        let e = parse_expr("u^-2", &vars5()).unwrap();
        assert_eq!(e, ExprNode::Pow(Box::new(ExprNode::Var(0)), -2));
    }

    #[test]
    fn fractional_exponent_rejected() {
        let err = parse_expr("u^1.5", &vars5()).unwrap_err();
        assert_eq!(err, ParseError::NonIntegerExponent { offset: 2 });
    }

    #[test]
    fn variable_exponent_rejected() {
        let err = parse_expr("u^v", &vars5()).unwrap_err();
        assert_eq!(err, ParseError::NonIntegerExponent { offset: 2 });
    }

    #[test]
    fn empty_input_rejected() {
        assert_eq!(parse_expr("   ", &vars5()).unwrap_err(), ParseError::EmptyInput);
    }

    #[test]
    fn display_round_trips_through_parser() {
        let vars: Vec<String> = (0..5).map(|i| format!("x{i}")).collect();
        for src in ["u+v*w", "t*cos(w)-exp(u)/(1+v^2)", "-u^2+sqrt(z*z)"] {
            let e = parse_expr(src, &vars5()).unwrap();
            let printed = format!("{e}");
            let reparsed = parse_expr(&printed, &vars).unwrap();
            assert_eq!(e, reparsed, "{src} -> {printed}");
        }
    }

    #[test]
    fn scientific_notation_numbers() {
        let e = parse_expr("1.5e-3", &vars5()).unwrap();
        assert_eq!(e, ExprNode::Const(1.5e-3));
    }
}
