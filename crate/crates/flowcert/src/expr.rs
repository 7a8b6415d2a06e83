//! Tiny expression language for scenario-defined fields.
//!
//! Custom metric entries, vector fields, one-forms and potentials are
//! given as strings over a fixed variable set, e.g. `exp(2*t)` or
//! `2*v1^2/(1+q1)`. Supported: `+ - * / ^`, unary minus, parentheses,
//! the functions `exp ln sin cos tan sqrt abs`, and the constants
//! `pi` and `e`. Variables are declared when compiling, so a metric
//! entry may use `(t, q1..qd)` while a force may also use `v1..vd`.
//!
//! Expressions are parsed once into an AST and evaluated against a flat
//! slot array; evaluation itself never fails (division by zero etc.
//! yields non-finite values which callers treat per their own contract).

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Token {
    Num(f64),
    Ident(usize, usize), // byte range into the source
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Exp,
    Ln,
    Sin,
    Cos,
    Tan,
    Sqrt,
    Abs,
}

impl Func {
    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Exp => x.exp(),
            Func::Ln => x.ln(),
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Tan => x.tan(),
            Func::Sqrt => x.sqrt(),
            Func::Abs => x.abs(),
        }
    }
}

#[derive(Debug, Clone)]
enum Ast {
    Num(f64),
    Var(usize),
    Neg(Box<Ast>),
    Add(Box<Ast>, Box<Ast>),
    Sub(Box<Ast>, Box<Ast>),
    Mul(Box<Ast>, Box<Ast>),
    Div(Box<Ast>, Box<Ast>),
    Pow(Box<Ast>, Box<Ast>),
    Call(Func, Box<Ast>),
}

/// A compiled expression over a declared variable list.
#[derive(Debug, Clone)]
pub struct Expr {
    ast: Ast,
    source: String,
    arity: usize,
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Expr {
    /// Compile `source` with the given variable names. The n-th name
    /// binds to slot n of the array passed to [`Expr::eval`].
    pub fn compile(source: &str, variables: &[&str]) -> Result<Expr> {
        let tokens = tokenize(source)?;
        let mut parser = Parser {
            src: source,
            tokens: &tokens,
            pos: 0,
            variables,
        };
        let ast = parser.expression()?;
        if parser.pos != tokens.len() {
            return Err(Error::Expr(format!(
                "unexpected trailing input in `{source}`"
            )));
        }
        Ok(Expr {
            ast,
            source: source.to_string(),
            arity: variables.len(),
        })
    }

    /// Evaluate against one value per declared variable.
    pub fn eval(&self, vars: &[f64]) -> f64 {
        debug_assert_eq!(vars.len(), self.arity);
        eval_ast(&self.ast, vars)
    }

    pub fn arity(&self) -> usize {
        self.arity
    }
}

fn eval_ast(ast: &Ast, vars: &[f64]) -> f64 {
    match ast {
        Ast::Num(x) => *x,
        Ast::Var(i) => vars[*i],
        Ast::Neg(a) => -eval_ast(a, vars),
        Ast::Add(a, b) => eval_ast(a, vars) + eval_ast(b, vars),
        Ast::Sub(a, b) => eval_ast(a, vars) - eval_ast(b, vars),
        Ast::Mul(a, b) => eval_ast(a, vars) * eval_ast(b, vars),
        Ast::Div(a, b) => eval_ast(a, vars) / eval_ast(b, vars),
        Ast::Pow(a, b) => eval_ast(a, vars).powf(eval_ast(b, vars)),
        Ast::Call(f, a) => f.apply(eval_ast(a, vars)),
    }
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                out.push(Token::Plus);
                i += 1;
            }
            '-' => {
                out.push(Token::Minus);
                i += 1;
            }
            '*' => {
                out.push(Token::Star);
                i += 1;
            }
            '/' => {
                out.push(Token::Slash);
                i += 1;
            }
            '^' => {
                out.push(Token::Caret);
                i += 1;
            }
            '(' => {
                out.push(Token::LParen);
                i += 1;
            }
            ')' => {
                out.push(Token::RParen);
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len()
                    && matches!(bytes[i] as char, '0'..='9' | '.' | 'e' | 'E')
                {
                    // allow exponent signs such as 1e-3
                    if matches!(bytes[i] as char, 'e' | 'E')
                        && i + 1 < bytes.len()
                        && matches!(bytes[i + 1] as char, '+' | '-')
                    {
                        i += 1;
                    }
                    i += 1;
                }
                let text = &src[start..i];
                let value: f64 = text.parse().map_err(|_| {
                    Error::Expr(format!("bad number `{text}` at byte {start} in `{src}`"))
                })?;
                out.push(Token::Num(value));
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len()
                    && matches!(bytes[i] as char, 'a'..='z' | 'A'..='Z' | '0'..='9' | '_')
                {
                    i += 1;
                }
                out.push(Token::Ident(start, i));
            }
            other => {
                return Err(Error::Expr(format!(
                    "unexpected character `{other}` at byte {i} in `{src}`"
                )))
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    src: &'a str,
    tokens: &'a [Token],
    pos: usize,
    variables: &'a [&'a str],
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<Token> {
        self.tokens.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.peek();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, t: Token, what: &str) -> Result<()> {
        if self.peek() == Some(t) {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::Expr(format!("expected {what} in `{}`", self.src)))
        }
    }

    fn expression(&mut self) -> Result<Ast> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.pos += 1;
                    lhs = Ast::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Token::Minus) => {
                    self.pos += 1;
                    lhs = Ast::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Ast> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.pos += 1;
                    lhs = Ast::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Some(Token::Slash) => {
                    self.pos += 1;
                    lhs = Ast::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    // `^` binds tighter than unary minus on the left (so -x^2 == -(x^2))
    // and is right-associative.
    fn factor(&mut self) -> Result<Ast> {
        if self.peek() == Some(Token::Minus) {
            self.pos += 1;
            return Ok(Ast::Neg(Box::new(self.factor()?)));
        }
        let base = self.primary()?;
        if self.peek() == Some(Token::Caret) {
            self.pos += 1;
            let exp = self.factor()?;
            return Ok(Ast::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Ast> {
        match self.bump() {
            Some(Token::Num(x)) => Ok(Ast::Num(x)),
            Some(Token::LParen) => {
                let inner = self.expression()?;
                self.expect(Token::RParen, "closing `)`")?;
                Ok(inner)
            }
            Some(Token::Ident(a, b)) => {
                let name = &self.src[a..b];
                if self.peek() == Some(Token::LParen) {
                    let func = match name {
                        "exp" => Func::Exp,
                        "ln" => Func::Ln,
                        "sin" => Func::Sin,
                        "cos" => Func::Cos,
                        "tan" => Func::Tan,
                        "sqrt" => Func::Sqrt,
                        "abs" => Func::Abs,
                        _ => {
                            return Err(Error::Expr(format!(
                                "unknown function `{name}` in `{}`",
                                self.src
                            )))
                        }
                    };
                    self.pos += 1;
                    let arg = self.expression()?;
                    self.expect(Token::RParen, "closing `)` of call")?;
                    return Ok(Ast::Call(func, Box::new(arg)));
                }
                match name {
                    "pi" => Ok(Ast::Num(std::f64::consts::PI)),
                    "e" => Ok(Ast::Num(std::f64::consts::E)),
                    _ => {
                        if let Some(slot) = self.variables.iter().position(|v| *v == name) {
                            Ok(Ast::Var(slot))
                        } else {
                            Err(Error::Expr(format!(
                                "unknown variable `{name}` in `{}` (expected one of {:?})",
                                self.src, self.variables
                            )))
                        }
                    }
                }
            }
            _ => Err(Error::Expr(format!(
                "expected a value in `{}`",
                self.src
            ))),
        }
    }
}

/// Variable name list `t, q1..qd` used by metric entries, one-forms and
/// potentials.
pub fn tq_names(dim: usize) -> Vec<String> {
    let mut names = vec!["t".to_string()];
    for i in 1..=dim {
        names.push(format!("q{i}"));
    }
    names
}

/// Variable name list `t, q1..qd, v1..vd` used by forces.
pub fn tqv_names(dim: usize) -> Vec<String> {
    let mut names = tq_names(dim);
    for i in 1..=dim {
        names.push(format!("v{i}"));
    }
    names
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn compile1(src: &str) -> Expr {
        Expr::compile(src, &["x"]).unwrap()
    }

    #[test]
    fn arithmetic_and_precedence() {
        assert_relative_eq!(compile1("1+2*3").eval(&[0.0]), 7.0);
        assert_relative_eq!(compile1("(1+2)*3").eval(&[0.0]), 9.0);
        assert_relative_eq!(compile1("2^3^2").eval(&[0.0]), 512.0); // right assoc
        assert_relative_eq!(compile1("-x^2").eval(&[3.0]), -9.0);
        assert_relative_eq!(compile1("6/4/2").eval(&[0.0]), 0.75);
    }

    #[test]
    fn functions_and_constants() {
        assert_relative_eq!(compile1("exp(1)").eval(&[0.0]), std::f64::consts::E);
        assert_relative_eq!(compile1("ln(e)").eval(&[0.0]), 1.0, epsilon = 1e-15);
        assert_relative_eq!(compile1("sin(pi/2)").eval(&[0.0]), 1.0);
        assert_relative_eq!(compile1("cos(0)").eval(&[0.0]), 1.0);
        assert_relative_eq!(compile1("sqrt(2)^2").eval(&[0.0]), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn scientific_notation() {
        assert_relative_eq!(compile1("1e-3 + 2.5E2").eval(&[0.0]), 250.001);
    }

    #[test]
    fn bound_variables() {
        let e = Expr::compile("2*v1^2/(1+q1)", &["t", "q1", "v1"]).unwrap();
        assert_relative_eq!(e.eval(&[0.0, 1.0, 3.0]), 9.0);
    }

    #[test]
    fn unknown_variable_is_rejected() {
        let err = Expr::compile("q1 + z", &["t", "q1"]).unwrap_err();
        assert!(err.to_string().contains("unknown variable `z`"));
    }

    #[test]
    fn unknown_function_is_rejected() {
        assert!(Expr::compile("sinh(t)", &["t"]).is_err());
    }

    #[test]
    fn trailing_garbage_is_rejected() {
        assert!(Expr::compile("1 + 2 )", &[]).is_err());
        assert!(Expr::compile("1 2", &[]).is_err());
    }

    #[test]
    fn division_by_zero_propagates_as_non_finite() {
        let e = compile1("1/x");
        assert!(e.eval(&[0.0]).is_infinite());
    }
}
