//! Lexer and recursive-descent parser for `.ml` programs and `.mlt` scripts.

use thiserror::Error;

use super::ast::*;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at {line}:{col}: {message}")]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(u64),
    Str(String),
    Punct(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    span: Span,
}

const PUNCTS: &[&str] = &[
    "==", "!=", "<=", ">=", "&&", "||", "{", "}", "(", ")", ";", ",", ".", "=", "+", "-", "*", "/",
    "%", "<", ">", "!", ":",
];

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    let err = |line, col, message: String| ParseError { line, col, message };
    while i < chars.len() {
        let c = chars[i];
        let span = Span { line, col };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += (i - start) as u32;
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                span,
            });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            col += (i - start) as u32;
            let text: String = chars[start..i].iter().collect();
            let value = text.parse::<u64>().map_err(|_| {
                err(
                    span.line,
                    span.col,
                    format!("integer literal `{text}` out of range"),
                )
            })?;
            out.push(Token {
                tok: Tok::Int(value),
                span,
            });
            continue;
        }
        if c == '"' {
            i += 1;
            col += 1;
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None | Some('\n') => {
                        return Err(err(
                            span.line,
                            span.col,
                            "unterminated string literal".into(),
                        ))
                    }
                    Some('"') => {
                        i += 1;
                        col += 1;
                        break;
                    }
                    Some('\\') => {
                        let esc = chars.get(i + 1).copied();
                        let ch = match esc {
                            Some('n') => '\n',
                            Some('t') => '\t',
                            Some('"') => '"',
                            Some('\\') => '\\',
                            _ => return Err(err(line, col, "invalid escape sequence".into())),
                        };
                        s.push(ch);
                        i += 2;
                        col += 2;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                        col += 1;
                    }
                }
            }
            out.push(Token {
                tok: Tok::Str(s),
                span,
            });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match PUNCTS.iter().find(|p| rest.starts_with(**p)) {
            Some(p) => {
                i += p.len();
                col += p.len() as u32;
                out.push(Token {
                    tok: Tok::Punct(p),
                    span,
                });
            }
            None => return Err(err(line, col, format!("unexpected character `{c}`"))),
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        span: Span { line, col },
    });
    Ok(out)
}

const KEYWORDS: &[&str] = &[
    "class", "extends", "pub", "priv", "static", "init", "let", "if", "else", "while", "return",
    "throw", "new", "this", "null", "true", "false", "int", "bool", "str", "void",
];

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

/// Parses a program source file.
pub fn parse(src: &str) -> Result<Program, ParseError> {
    let mut p = Parser::new(src)?;
    let mut classes = Vec::new();
    while !p.at_eof() {
        classes.push(p.class_decl(0)?);
    }
    Ok(Program {
        classes,
        seed_table: Vec::new(),
    })
}

/// Parses a test script (`.mlt`): a sequence of statements and assertions.
pub fn parse_script(src: &str) -> Result<TestScript, ParseError> {
    let mut p = Parser::new(src)?;
    let mut stmts = Vec::new();
    while !p.at_eof() {
        stmts.push(p.stmt()?);
    }
    Ok(TestScript { stmts })
}

impl Parser {
    fn new(src: &str) -> Result<Self, ParseError> {
        Ok(Parser {
            toks: lex(src)?,
            pos: 0,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        let span = self.span();
        Err(ParseError {
            line: span.line,
            col: span.col,
            message: message.into(),
        })
    }

    fn describe(&self) -> String {
        match self.peek() {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(n) => format!("`{n}`"),
            Tok::Str(_) => "string literal".into(),
            Tok::Punct(p) => format!("`{p}`"),
            Tok::Eof => "end of input".into(),
        }
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> Result<(), ParseError> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            self.error(format!("expected `{p}`, found {}", self.describe()))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.error(format!("expected `{kw}`, found {}", self.describe()))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => self.error(format!("expected {what}, found {}", self.describe())),
        }
    }

    fn visibility(&mut self) -> Option<Visibility> {
        if self.eat_kw("pub") {
            Some(Visibility::Public)
        } else if self.eat_kw("priv") {
            Some(Visibility::Private)
        } else {
            None
        }
    }

    fn class_decl(&mut self, depth: usize) -> Result<ClassDecl, ParseError> {
        let span = self.span();
        let vis = self.visibility().unwrap_or(Visibility::Public);
        self.expect_kw("class")?;
        let name = self.ident("class name")?;
        let extends = if self.eat_kw("extends") {
            Some(self.type_class_name()?)
        } else {
            None
        };
        self.expect_punct("{")?;
        let mut members = Vec::new();
        let mut inner = Vec::new();
        while !self.is_punct("}") {
            if self.at_eof() {
                return self.error("unexpected end of input in class body");
            }
            let is_class = self.is_kw("class")
                || (matches!(self.peek(), Tok::Ident(s) if s == "pub" || s == "priv")
                    && matches!(self.peek_at(1), Tok::Ident(s) if s == "class"));
            if is_class {
                if depth >= 1 {
                    return self.error("class nesting deeper than one level");
                }
                inner.push(self.class_decl(depth + 1)?);
            } else {
                members.push(self.member()?);
            }
        }
        self.expect_punct("}")?;
        Ok(ClassDecl {
            vis,
            name,
            extends,
            members,
            inner,
            span,
        })
    }

    fn type_class_name(&mut self) -> Result<String, ParseError> {
        let mut name = self.ident("class name")?;
        if self.is_punct(".") {
            self.bump();
            name.push('.');
            name.push_str(&self.ident("class name")?);
        }
        Ok(name)
    }

    fn type_name(&mut self) -> Result<TypeName, ParseError> {
        let t = match self.peek() {
            Tok::Ident(s) if s == "int" => TypeName::Int,
            Tok::Ident(s) if s == "bool" => TypeName::Bool,
            Tok::Ident(s) if s == "str" => TypeName::Str,
            Tok::Ident(s) if s == "void" => TypeName::Void,
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                return Ok(TypeName::Class(self.type_class_name()?))
            }
            _ => return self.error(format!("expected type, found {}", self.describe())),
        };
        self.bump();
        Ok(t)
    }

    fn member(&mut self) -> Result<Member, ParseError> {
        let span = self.span();
        let vis = self.visibility().unwrap_or(Visibility::Private);
        let is_static = self.eat_kw("static");
        if !is_static && self.is_kw("init") {
            self.bump();
            let params = self.params()?;
            let body = self.block()?;
            return Ok(Member::Ctor(CtorDecl {
                vis,
                params,
                body,
                span,
            }));
        }
        let ty = self.type_name()?;
        let name = self.ident("member name")?;
        if self.is_punct("(") {
            let params = self.params()?;
            let body = self.block()?;
            return Ok(Member::Method(MethodDecl {
                vis,
                is_static,
                ret: ty,
                name,
                params,
                body,
                span,
            }));
        }
        if is_static {
            return self.error("static fields are not supported");
        }
        let init = if self.eat_punct("=") {
            Some(self.literal()?)
        } else {
            None
        };
        self.expect_punct(";")?;
        Ok(Member::Field(FieldDecl {
            vis,
            ty,
            name,
            init,
            span,
        }))
    }

    fn literal(&mut self) -> Result<Literal, ParseError> {
        let negative = self.eat_punct("-");
        match self.bump() {
            Tok::Int(n) => match int_literal(n, negative) {
                Some(l) => Ok(l),
                None => self.error("integer literal out of range"),
            },
            Tok::Str(s) if !negative => Ok(Literal::Str(s)),
            Tok::Ident(s) if !negative && s == "true" => Ok(Literal::Bool(true)),
            Tok::Ident(s) if !negative && s == "false" => Ok(Literal::Bool(false)),
            Tok::Ident(s) if !negative && s == "null" => Ok(Literal::Null),
            _ => {
                self.pos -= 1;
                self.error(format!("expected literal, found {}", self.describe()))
            }
        }
    }

    fn params(&mut self) -> Result<Vec<Param>, ParseError> {
        self.expect_punct("(")?;
        let mut params = Vec::new();
        if !self.is_punct(")") {
            loop {
                let ty = self.type_name()?;
                let name = self.ident("parameter name")?;
                params.push(Param { name, ty });
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        Ok(params)
    }

    fn block(&mut self) -> Result<Block, ParseError> {
        self.expect_punct("{")?;
        let mut stmts = Vec::new();
        while !self.is_punct("}") {
            if self.at_eof() {
                return self.error("unexpected end of input in block");
            }
            stmts.push(self.stmt()?);
        }
        self.expect_punct("}")?;
        Ok(Block { stmts })
    }

    fn stmt(&mut self) -> Result<Stmt, ParseError> {
        let span = self.span();
        let kind = self.stmt_kind()?;
        Ok(Stmt {
            kind,
            span,
            id: StmtId::UNASSIGNED,
        })
    }

    fn stmt_kind(&mut self) -> Result<StmtKind, ParseError> {
        if self.eat_kw("let") {
            let name = self.ident("variable name")?;
            let ty = if self.eat_punct(":") {
                Some(self.type_name()?)
            } else {
                None
            };
            self.expect_punct("=")?;
            let init = self.expr()?;
            self.expect_punct(";")?;
            return Ok(StmtKind::Let { name, ty, init });
        }
        if self.eat_kw("if") {
            return self.if_rest();
        }
        if self.eat_kw("while") {
            self.expect_punct("(")?;
            let cond = self.expr()?;
            self.expect_punct(")")?;
            let body = self.block()?;
            return Ok(StmtKind::While { cond, body });
        }
        if self.eat_kw("return") {
            if self.eat_punct(";") {
                return Ok(StmtKind::Return(None));
            }
            let e = self.expr()?;
            self.expect_punct(";")?;
            return Ok(StmtKind::Return(Some(e)));
        }
        if self.eat_kw("throw") {
            let e = self.expr()?;
            self.expect_punct(";")?;
            return Ok(StmtKind::Throw(e));
        }
        if let Tok::Ident(name) = self.peek() {
            let kind = match name.as_str() {
                "assertEq" => Some(0),
                "assertNull" => Some(1),
                "assertNotNull" => Some(2),
                _ => None,
            };
            if let (Some(kind), Tok::Punct("(")) = (kind, self.peek_at(1)) {
                self.bump();
                self.bump();
                let first = self.expr()?;
                let assertion = if kind == 0 {
                    self.expect_punct(",")?;
                    Assertion::Eq(first, self.expr()?)
                } else if kind == 1 {
                    Assertion::Null(first)
                } else {
                    Assertion::NotNull(first)
                };
                self.expect_punct(")")?;
                self.expect_punct(";")?;
                return Ok(StmtKind::Assert(assertion));
            }
        }
        let e = self.expr()?;
        if self.eat_punct("=") {
            let value = self.expr()?;
            self.expect_punct(";")?;
            return Ok(StmtKind::Assign { target: e, value });
        }
        self.expect_punct(";")?;
        Ok(StmtKind::Expr(e))
    }

    fn if_rest(&mut self) -> Result<StmtKind, ParseError> {
        self.expect_punct("(")?;
        let cond = self.expr()?;
        self.expect_punct(")")?;
        let then_block = self.block()?;
        let else_block = if self.eat_kw("else") {
            if self.is_kw("if") {
                let span = self.span();
                self.bump();
                let kind = self.if_rest()?;
                Some(Block {
                    stmts: vec![Stmt {
                        kind,
                        span,
                        id: StmtId::UNASSIGNED,
                    }],
                })
            } else {
                Some(self.block()?)
            }
        } else {
            None
        };
        Ok(StmtKind::If {
            cond,
            then_block,
            else_block,
        })
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.binary(1)
    }

    fn peek_binop(&self) -> Option<BinOp> {
        let Tok::Punct(p) = self.peek() else {
            return None;
        };
        Some(match *p {
            "+" => BinOp::Add,
            "-" => BinOp::Sub,
            "*" => BinOp::Mul,
            "/" => BinOp::Div,
            "%" => BinOp::Rem,
            "==" => BinOp::Eq,
            "!=" => BinOp::Ne,
            "<" => BinOp::Lt,
            "<=" => BinOp::Le,
            ">" => BinOp::Gt,
            ">=" => BinOp::Ge,
            "&&" => BinOp::And,
            "||" => BinOp::Or,
            _ => return None,
        })
    }

    fn binary(&mut self, min_prec: u8) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.peek_binop() {
            if op.precedence() < min_prec {
                break;
            }
            let span = self.span();
            self.bump();
            let rhs = self.binary(op.precedence() + 1)?;
            lhs = Expr {
                kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)),
                span,
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        let span = self.span();
        if self.is_punct("-") {
            if let Tok::Int(n) = *self.peek_at(1) {
                self.bump();
                self.bump();
                let lit = match int_literal(n, true) {
                    Some(l) => l,
                    None => return self.error("integer literal out of range"),
                };
                return self.postfix(Expr {
                    kind: ExprKind::Lit(lit),
                    span,
                });
            }
            self.bump();
            let inner = self.unary()?;
            return Ok(Expr {
                kind: ExprKind::Unary(UnOp::Neg, Box::new(inner)),
                span,
            });
        }
        if self.eat_punct("!") {
            let inner = self.unary()?;
            return Ok(Expr {
                kind: ExprKind::Unary(UnOp::Not, Box::new(inner)),
                span,
            });
        }
        let primary = self.primary()?;
        self.postfix(primary)
    }

    fn postfix(&mut self, mut e: Expr) -> Result<Expr, ParseError> {
        while self.is_punct(".") {
            let span = self.span();
            self.bump();
            let name = self.ident("member name")?;
            if self.is_punct("(") {
                let args = self.args()?;
                e = Expr {
                    kind: ExprKind::Call {
                        recv: Box::new(e),
                        method: name,
                        args,
                    },
                    span,
                };
            } else {
                e = Expr {
                    kind: ExprKind::Field(Box::new(e), name),
                    span,
                };
            }
        }
        Ok(e)
    }

    fn args(&mut self) -> Result<Vec<Expr>, ParseError> {
        self.expect_punct("(")?;
        let mut args = Vec::new();
        if !self.is_punct(")") {
            loop {
                args.push(self.expr()?);
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        Ok(args)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let span = self.span();
        let kind = match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                match int_literal(n, false) {
                    Some(l) => ExprKind::Lit(l),
                    None => return self.error("integer literal out of range"),
                }
            }
            Tok::Str(s) => {
                self.bump();
                ExprKind::Lit(Literal::Str(s))
            }
            Tok::Punct("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_punct(")")?;
                return Ok(e);
            }
            Tok::Ident(name) => match name.as_str() {
                "true" => {
                    self.bump();
                    ExprKind::Lit(Literal::Bool(true))
                }
                "false" => {
                    self.bump();
                    ExprKind::Lit(Literal::Bool(false))
                }
                "null" => {
                    self.bump();
                    ExprKind::Lit(Literal::Null)
                }
                "this" => {
                    self.bump();
                    ExprKind::This
                }
                "new" => {
                    self.bump();
                    let class = self.type_class_name()?;
                    let args = self.args()?;
                    ExprKind::New { class, args }
                }
                "__seed" => {
                    self.bump();
                    self.expect_punct("(")?;
                    let n = match self.bump() {
                        Tok::Int(n) if n <= u32::MAX as u64 => n as u32,
                        _ => return self.error("expected seed index"),
                    };
                    self.expect_punct(")")?;
                    ExprKind::Seed(n)
                }
                _ if KEYWORDS.contains(&name.as_str()) => {
                    return self.error(format!("expected expression, found {}", self.describe()))
                }
                _ => {
                    self.bump();
                    match Builtin::from_name(&name) {
                        Some(b) if self.is_punct("(") => ExprKind::Builtin(b, self.args()?),
                        _ => ExprKind::Var(name),
                    }
                }
            },
            _ => return self.error(format!("expected expression, found {}", self.describe())),
        };
        Ok(Expr { kind, span })
    }
}

fn int_literal(n: u64, negative: bool) -> Option<Literal> {
    if negative {
        if n == 1u64 << 63 {
            Some(Literal::Int(i64::MIN))
        } else {
            i64::try_from(n).ok().map(|v| Literal::Int(-v))
        }
    } else {
        i64::try_from(n).ok().map(Literal::Int)
    }
}
