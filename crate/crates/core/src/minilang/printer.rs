//! Canonical pretty printer. Output is the normative formatting of `.ml`
//! and `.mlt` files: four-space indentation, one statement per line.

use std::fmt::Write;

use super::ast::*;

const INDENT: &str = "    ";

pub fn pretty_print(program: &Program) -> String {
    let mut out = String::new();
    for (i, class) in program.classes.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        print_class(&mut out, class, 0);
    }
    out
}

pub fn print_script(script: &TestScript) -> String {
    let mut out = String::new();
    for stmt in &script.stmts {
        print_stmt(&mut out, stmt, 0);
    }
    out
}

/// Canonical text of a single member, used for structural diffing.
pub fn print_member(member: &Member) -> String {
    let mut out = String::new();
    print_member_into(&mut out, member, 0);
    out
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str(INDENT);
    }
}

fn print_class(out: &mut String, class: &ClassDecl, depth: usize) {
    indent(out, depth);
    let _ = write!(out, "{} class {}", class.vis.keyword(), class.name);
    if let Some(sup) = &class.extends {
        let _ = write!(out, " extends {sup}");
    }
    out.push_str(" {\n");
    for member in &class.members {
        print_member_into(out, member, depth + 1);
    }
    for inner in &class.inner {
        print_class(out, inner, depth + 1);
    }
    indent(out, depth);
    out.push_str("}\n");
}

fn print_params(out: &mut String, params: &[Param]) {
    out.push('(');
    for (i, p) in params.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{} {}", p.ty, p.name);
    }
    out.push(')');
}

fn print_member_into(out: &mut String, member: &Member, depth: usize) {
    indent(out, depth);
    match member {
        Member::Field(f) => {
            let _ = write!(out, "{} {} {}", f.vis.keyword(), f.ty, f.name);
            if let Some(init) = &f.init {
                let _ = write!(out, " = {}", literal_text(init));
            }
            out.push_str(";\n");
        }
        Member::Ctor(c) => {
            let _ = write!(out, "{} init", c.vis.keyword());
            print_params(out, &c.params);
            print_block_tail(out, &c.body, depth);
            out.push('\n');
        }
        Member::Method(m) => {
            out.push_str(m.vis.keyword());
            if m.is_static {
                out.push_str(" static");
            }
            let _ = write!(out, " {} {}", m.ret, m.name);
            print_params(out, &m.params);
            print_block_tail(out, &m.body, depth);
            out.push('\n');
        }
    }
}

/// Prints ` { ... }` starting on the current line; leaves the cursor after `}`.
fn print_block_tail(out: &mut String, block: &Block, depth: usize) {
    if block.stmts.is_empty() {
        out.push_str(" {}");
        return;
    }
    out.push_str(" {\n");
    for stmt in &block.stmts {
        print_stmt(out, stmt, depth + 1);
    }
    indent(out, depth);
    out.push('}');
}

fn print_stmt(out: &mut String, stmt: &Stmt, depth: usize) {
    indent(out, depth);
    print_stmt_body(out, stmt, depth);
    out.push('\n');
}

fn print_stmt_body(out: &mut String, stmt: &Stmt, depth: usize) {
    match &stmt.kind {
        StmtKind::Let { name, ty, init } => {
            let _ = write!(out, "let {name}");
            if let Some(ty) = ty {
                let _ = write!(out, ": {ty}");
            }
            let _ = write!(out, " = {};", expr_text(init));
        }
        StmtKind::Assign { target, value } => {
            let _ = write!(out, "{} = {};", expr_text(target), expr_text(value));
        }
        StmtKind::If {
            cond,
            then_block,
            else_block,
        } => {
            let _ = write!(out, "if ({})", expr_text(cond));
            print_block_tail(out, then_block, depth);
            if let Some(else_block) = else_block {
                match else_block.stmts.as_slice() {
                    [only] if matches!(only.kind, StmtKind::If { .. }) => {
                        out.push_str(" else ");
                        print_stmt_body(out, only, depth);
                    }
                    _ => {
                        out.push_str(" else");
                        print_block_tail(out, else_block, depth);
                    }
                }
            }
        }
        StmtKind::While { cond, body } => {
            let _ = write!(out, "while ({})", expr_text(cond));
            print_block_tail(out, body, depth);
        }
        StmtKind::Return(None) => out.push_str("return;"),
        StmtKind::Return(Some(e)) => {
            let _ = write!(out, "return {};", expr_text(e));
        }
        StmtKind::Throw(e) => {
            let _ = write!(out, "throw {};", expr_text(e));
        }
        StmtKind::Expr(e) => {
            let _ = write!(out, "{};", expr_text(e));
        }
        StmtKind::Assert(a) => match a {
            Assertion::Eq(l, r) => {
                let _ = write!(out, "assertEq({}, {});", expr_text(l), expr_text(r));
            }
            Assertion::Null(e) => {
                let _ = write!(out, "assertNull({});", expr_text(e));
            }
            Assertion::NotNull(e) => {
                let _ = write!(out, "assertNotNull({});", expr_text(e));
            }
        },
    }
}

pub fn literal_text(lit: &Literal) -> String {
    match lit {
        Literal::Int(n) => n.to_string(),
        Literal::Bool(b) => b.to_string(),
        Literal::Null => "null".into(),
        Literal::Str(s) => {
            let mut out = String::with_capacity(s.len() + 2);
            out.push('"');
            for c in s.chars() {
                match c {
                    '"' => out.push_str("\\\""),
                    '\\' => out.push_str("\\\\"),
                    '\n' => out.push_str("\\n"),
                    '\t' => out.push_str("\\t"),
                    c => out.push(c),
                }
            }
            out.push('"');
            out
        }
    }
}

pub fn expr_text(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(&mut out, e, 0);
    out
}

/// Precedence of postfix/primary forms; they never need parentheses.
const ATOM: u8 = 10;
const UNARY: u8 = 8;

fn expr_prec(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Binary(op, ..) => op.precedence(),
        ExprKind::Unary(..) => UNARY,
        ExprKind::Lit(Literal::Int(n)) if *n < 0 => UNARY,
        _ => ATOM,
    }
}

fn write_expr(out: &mut String, e: &Expr, min_prec: u8) {
    let prec = expr_prec(e);
    let paren = prec < min_prec;
    if paren {
        out.push('(');
    }
    match &e.kind {
        ExprKind::Lit(lit) => out.push_str(&literal_text(lit)),
        ExprKind::Var(name) => out.push_str(name),
        ExprKind::This => out.push_str("this"),
        ExprKind::Seed(n) => {
            let _ = write!(out, "__seed({n})");
        }
        ExprKind::Field(recv, name) => {
            write_expr(out, recv, ATOM);
            let _ = write!(out, ".{name}");
        }
        ExprKind::Call { recv, method, args } => {
            write_expr(out, recv, ATOM);
            let _ = write!(out, ".{method}");
            write_args(out, args);
        }
        ExprKind::New { class, args } => {
            let _ = write!(out, "new {class}");
            write_args(out, args);
        }
        ExprKind::Builtin(b, args) => {
            out.push_str(b.name());
            write_args(out, args);
        }
        ExprKind::Unary(op, inner) => {
            match op {
                UnOp::Neg => out.push('-'),
                UnOp::Not => out.push('!'),
            }
            // `-` directly before an integer literal would re-lex as a
            // negative literal, so negation always parenthesizes non-atoms
            // and literals alike.
            let force = matches!(op, UnOp::Neg)
                && matches!(
                    inner.kind,
                    ExprKind::Lit(Literal::Int(_)) | ExprKind::Unary(UnOp::Neg, _)
                );
            if force {
                out.push('(');
                write_expr(out, inner, 0);
                out.push(')');
            } else {
                write_expr(out, inner, UNARY);
            }
        }
        ExprKind::Binary(op, lhs, rhs) => {
            let p = op.precedence();
            write_expr(out, lhs, p);
            let _ = write!(out, " {} ", op.symbol());
            write_expr(out, rhs, p + 1);
        }
    }
    if paren {
        out.push(')');
    }
}

fn write_args(out: &mut String, args: &[Expr]) {
    out.push('(');
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_expr(out, a, 0);
    }
    out.push(')');
}
