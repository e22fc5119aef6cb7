//! Tokenizer and recursive-descent parser for operator expressions.

use super::{BinOp, DslError, Expr, Func};

#[derive(Debug, Clone, PartialEq)]
enum TokKind {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    Comma,
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokKind,
    line: usize,
    col: usize,
}

fn syntax(line: usize, col: usize, msg: impl Into<String>) -> DslError {
    DslError::Syntax { line, col, msg: msg.into() }
}

fn lex(text: &str) -> Result<Vec<Token>, DslError> {
    let mut tokens = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let (tline, tcol) = (line, col);
        let advance = |n: usize, col: &mut usize, i: &mut usize| {
            *col += n;
            *i += n;
        };
        match c {
            '\n' => {
                line += 1;
                col = 1;
                i += 1;
            }
            c if c.is_whitespace() => advance(1, &mut col, &mut i),
            '+' => {
                tokens.push(Token { kind: TokKind::Plus, line: tline, col: tcol });
                advance(1, &mut col, &mut i);
            }
            '-' => {
                tokens.push(Token { kind: TokKind::Minus, line: tline, col: tcol });
                advance(1, &mut col, &mut i);
            }
            '*' => {
                tokens.push(Token { kind: TokKind::Star, line: tline, col: tcol });
                advance(1, &mut col, &mut i);
            }
            '/' => {
                tokens.push(Token { kind: TokKind::Slash, line: tline, col: tcol });
                advance(1, &mut col, &mut i);
            }
            '(' => {
                tokens.push(Token { kind: TokKind::LParen, line: tline, col: tcol });
                advance(1, &mut col, &mut i);
            }
            ')' => {
                tokens.push(Token { kind: TokKind::RParen, line: tline, col: tcol });
                advance(1, &mut col, &mut i);
            }
            ',' => {
                tokens.push(Token { kind: TokKind::Comma, line: tline, col: tcol });
                advance(1, &mut col, &mut i);
            }
            c if c.is_ascii_digit() => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                // Optional exponent part.
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let value = text
                    .parse::<f64>()
                    .map_err(|_| syntax(tline, tcol, format!("invalid number '{text}'")))?;
                tokens.push(Token { kind: TokKind::Number(value), line: tline, col: tcol });
                col += i - start;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                tokens.push(Token { kind: TokKind::Ident(text), line: tline, col: tcol });
                col += i - start;
            }
            other => return Err(syntax(tline, tcol, format!("unexpected character '{other}'"))),
        }
    }
    tokens.push(Token { kind: TokKind::Eof, line, col });
    Ok(tokens)
}

/// Where the parser currently sits; controls which variables and aggregates
/// are legal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    /// Operator body: `x` and aggregates allowed.
    Top,
    /// Body of `moment(mu, ...)`: only the bound variable `y`.
    MomentBody,
    /// Bounds of `window(mu, ...)`: `x` allowed, aggregates not.
    WindowBound,
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn next(&mut self) -> Token {
        let tok = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        tok
    }

    fn expect(&mut self, kind: TokKind, what: &str) -> Result<Token, DslError> {
        let tok = self.next();
        if tok.kind == kind {
            Ok(tok)
        } else {
            Err(syntax(tok.line, tok.col, format!("expected {what}")))
        }
    }

    fn expect_mu(&mut self) -> Result<(), DslError> {
        let tok = self.next();
        match tok.kind {
            TokKind::Ident(name) if name == "mu" => Ok(()),
            _ => Err(syntax(tok.line, tok.col, "expected the measure argument 'mu'")),
        }
    }

    fn expr(&mut self, mode: Mode) -> Result<Expr, DslError> {
        let mut lhs = self.term(mode)?;
        loop {
            let op = match self.peek().kind {
                TokKind::Plus => BinOp::Add,
                TokKind::Minus => BinOp::Sub,
                _ => break,
            };
            self.next();
            let rhs = self.term(mode)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self, mode: Mode) -> Result<Expr, DslError> {
        let mut lhs = self.unary(mode)?;
        loop {
            let op = match self.peek().kind {
                TokKind::Star => BinOp::Mul,
                TokKind::Slash => BinOp::Div,
                _ => break,
            };
            self.next();
            let rhs = self.unary(mode)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self, mode: Mode) -> Result<Expr, DslError> {
        if self.peek().kind == TokKind::Minus {
            self.next();
            let inner = self.unary(mode)?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.primary(mode)
    }

    fn primary(&mut self, mode: Mode) -> Result<Expr, DslError> {
        let tok = self.next();
        match tok.kind {
            TokKind::Number(v) => Ok(Expr::Number(v)),
            TokKind::LParen => {
                let inner = self.expr(mode)?;
                self.expect(TokKind::RParen, "')'")?;
                Ok(inner)
            }
            TokKind::Ident(name) => self.ident(name, tok.line, tok.col, mode),
            _ => Err(syntax(tok.line, tok.col, "expected a value")),
        }
    }

    fn ident(&mut self, name: String, line: usize, col: usize, mode: Mode) -> Result<Expr, DslError> {
        match name.as_str() {
            "x" => {
                if mode == Mode::MomentBody {
                    return Err(syntax(line, col, "the trait variable x cannot appear inside a moment body"));
                }
                Ok(Expr::X)
            }
            "y" => {
                if mode != Mode::MomentBody {
                    return Err(syntax(line, col, "the bound variable y is only available inside moment(mu, ...)"));
                }
                Ok(Expr::Y)
            }
            "mu" => Err(syntax(line, col, "'mu' can only appear as the measure argument of an aggregate")),
            "sqrt" | "exp" | "abs" => {
                let func = match name.as_str() {
                    "sqrt" => Func::Sqrt,
                    "exp" => Func::Exp,
                    _ => Func::Abs,
                };
                self.expect(TokKind::LParen, "'('")?;
                let arg = self.expr(mode)?;
                self.expect(TokKind::RParen, "')'")?;
                Ok(Expr::Call(func, Box::new(arg)))
            }
            "mass" | "moment" | "window" | "conv" => {
                if mode != Mode::Top {
                    return Err(syntax(line, col, format!("the aggregate '{name}' cannot be nested here")));
                }
                self.aggregate(&name)
            }
            _ => {
                if self.peek().kind == TokKind::LParen {
                    self.next();
                    let arg = self.expr(mode)?;
                    self.expect(TokKind::RParen, "')'")?;
                    Ok(Expr::Profile(name, Box::new(arg)))
                } else {
                    Err(DslError::UnknownIdentifier { name, line, col })
                }
            }
        }
    }

    fn aggregate(&mut self, name: &str) -> Result<Expr, DslError> {
        self.expect(TokKind::LParen, "'('")?;
        let expr = match name {
            "mass" => {
                self.expect_mu()?;
                Expr::Mass
            }
            "moment" => {
                self.expect_mu()?;
                self.expect(TokKind::Comma, "','")?;
                let body = self.expr(Mode::MomentBody)?;
                Expr::Moment(Box::new(body))
            }
            "window" => {
                self.expect_mu()?;
                self.expect(TokKind::Comma, "','")?;
                let lo = self.expr(Mode::WindowBound)?;
                self.expect(TokKind::Comma, "','")?;
                let hi = self.expr(Mode::WindowBound)?;
                Expr::Window(Box::new(lo), Box::new(hi))
            }
            "conv" => {
                let tok = self.next();
                let kernel = match tok.kind {
                    TokKind::Ident(k) if k != "mu" => k,
                    _ => return Err(syntax(tok.line, tok.col, "expected a kernel name")),
                };
                self.expect(TokKind::Comma, "','")?;
                self.expect_mu()?;
                Expr::Conv(kernel)
            }
            _ => unreachable!("aggregate() is only called for known aggregates"),
        };
        self.expect(TokKind::RParen, "')'")?;
        Ok(expr)
    }
}

/// Parses an operator expression into its tree form.
pub fn parse(text: &str) -> Result<Expr, DslError> {
    let tokens = lex(text)?;
    let mut parser = Parser { tokens, pos: 0 };
    let expr = parser.expr(Mode::Top)?;
    let tok = parser.next();
    if tok.kind != TokKind::Eof {
        return Err(syntax(tok.line, tok.col, "unexpected trailing input"));
    }
    Ok(expr)
}
