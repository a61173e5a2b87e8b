//! Shared helpers for integration tests: a random program generator with
//! passing project tests, and paths into the bundled corpus.

#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semamerge::minilang::{check, parse, ExecStatus, ProgramImage, Session, Value};

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

pub fn scenario_dir(name: &str) -> PathBuf {
    corpus_dir().join(name)
}

/// A generated program and project tests that pass on it.
#[derive(Clone, Debug)]
pub struct GeneratedProgram {
    pub source: String,
    pub tests: Vec<String>,
}

struct ClassPlan {
    name: String,
    parent: Option<usize>,
    /// Declared constructor arities and whether each is public.
    ctors: Vec<(usize, bool)>,
    methods: usize,
    inner: Option<bool>,
}

fn lit(rng: &mut ChaCha8Rng) -> i64 {
    rng.gen_range(-3..=9)
}

fn method_body(rng: &mut ChaCha8Rng, has_inner: bool, is_sub: bool, s: &mut String) {
    let own = if is_sub { "b" } else { "a" };
    let _ = writeln!(s, "        let t = p + this.{own};");
    for _ in 0..rng.gen_range(1..=3) {
        match rng.gen_range(0..5) {
            0 => {
                let _ = writeln!(s, "        if (t > {}) {{", lit(rng));
                let _ = writeln!(s, "            t = t - {};", lit(rng));
                s.push_str("        } else {\n");
                if is_sub {
                    let _ = writeln!(s, "            t = t + {};", lit(rng));
                } else {
                    s.push_str("            t = t + this.helper(t);\n");
                }
                s.push_str("        }\n");
            }
            1 => {
                s.push_str("        let i = 0;\n");
                let _ = writeln!(s, "        while (i < {}) {{", rng.gen_range(1..4));
                s.push_str("            t = t + i;\n");
                s.push_str("            i = i + 1;\n");
                s.push_str("        }\n");
            }
            2 if has_inner => {
                s.push_str("        let n = new In(t);\n");
                s.push_str("        t = t + n.get();\n");
            }
            3 => {
                s.push_str("        this.b = t;\n");
            }
            _ => {
                let _ = writeln!(s, "        t = t * {} + this.b;", rng.gen_range(1..3));
            }
        }
    }
    s.push_str("        return t;\n");
}

fn render(plans: &[ClassPlan], rng: &mut ChaCha8Rng) -> String {
    let mut s = String::new();
    for plan in plans {
        match plan.parent {
            Some(p) => {
                let _ = writeln!(s, "class {} extends {} {{", plan.name, plans[p].name);
            }
            None => {
                let _ = writeln!(s, "class {} {{", plan.name);
                s.push_str("    priv int a;\n");
                let _ = writeln!(s, "    pub int b = {};", lit(rng));
            }
        }
        for &(arity, public) in &plan.ctors {
            let vis = if public { "pub" } else { "priv" };
            let params: Vec<String> = (0..arity).map(|i| format!("int x{i}")).collect();
            let _ = writeln!(s, "    {vis} init({}) {{", params.join(", "));
            let own = if plan.parent.is_some() { "b" } else { "a" };
            let _ = writeln!(s, "        this.{own} = x0 + {};", lit(rng));
            if arity > 1 {
                s.push_str("        this.b = this.b + x1;\n");
            }
            s.push_str("    }\n");
        }
        for m in 0..plan.methods {
            let _ = writeln!(s, "    pub int m{m}(int p) {{");
            method_body(rng, plan.inner.is_some(), plan.parent.is_some(), &mut s);
            s.push_str("    }\n");
        }
        if plan.parent.is_none() {
            let _ = writeln!(
                s,
                "    priv int helper(int p) {{\n        return p * {} + this.a;\n    }}",
                rng.gen_range(0..3)
            );
        }
        if let Some(public) = plan.inner {
            let vis = if public { "pub" } else { "priv" };
            let _ = writeln!(
                s,
                "    {vis} class In {{\n        priv int v;\n        pub init(int v) {{\n            this.v = v;\n        }}\n        pub int get() {{\n            return this.v + {};\n        }}\n    }}",
                lit(rng)
            );
        }
        s.push_str("}\n");
    }
    s
}

fn value_text(v: &Value) -> Option<String> {
    match v {
        Value::Int(i) => Some(i.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

/// Builds a test by executing random public calls and recording the
/// observed results as assertions.
fn make_test(image: &ProgramImage, plans: &[ClassPlan], rng: &mut ChaCha8Rng) -> Option<String> {
    let mut session = Session::new(image, 0);
    let mut text = String::new();
    let mut objects: Vec<(String, Value, usize)> = Vec::new();
    let mut next = 0;
    for _ in 0..rng.gen_range(2..7) {
        let make_new = objects.is_empty() || rng.gen_bool(0.35);
        if make_new {
            let ci = rng.gen_range(0..plans.len());
            let plan = &plans[ci];
            let arity = if plan.ctors.is_empty() {
                0
            } else {
                match plan
                    .ctors
                    .iter()
                    .filter(|c| c.1)
                    .collect::<Vec<_>>()
                    .choose(rng)
                {
                    Some(c) => c.0,
                    None => continue,
                }
            };
            let args: Vec<i64> = (0..arity).map(|_| lit(rng)).collect();
            let r = session.invoke_named(
                &Value::Null,
                Some(&plan.name),
                "init",
                args.iter().map(|&a| Value::Int(a)).collect(),
                5_000,
            )?;
            let ExecStatus::Completed(v) = r.status else {
                continue;
            };
            let var = format!("o{next}");
            next += 1;
            let argtext: Vec<String> = args.iter().map(|a| a.to_string()).collect();
            let _ = writeln!(
                text,
                "let {var} = new {}({});",
                plan.name,
                argtext.join(", ")
            );
            objects.push((var, v, ci));
            if plan.inner == Some(true) && rng.gen_bool(0.3) {
                let x = lit(rng);
                let inner = format!("{}.In", plan.name);
                let r = session.invoke_named(
                    &Value::Null,
                    Some(&inner),
                    "init",
                    vec![Value::Int(x)],
                    5_000,
                )?;
                if let ExecStatus::Completed(iv) = r.status {
                    let g = session.invoke_named(&iv, None, "get", vec![], 5_000)?;
                    if let ExecStatus::Completed(gv) = g.status {
                        let ivar = format!("i{next}");
                        next += 1;
                        let _ = writeln!(text, "let {ivar} = new {inner}({x});");
                        let _ = writeln!(text, "assertEq({ivar}.get(), {});", value_text(&gv)?);
                    }
                }
            }
        } else {
            let (var, recv, ci) = objects.choose(rng).cloned()?;
            let methods = class_methods(plans, ci);
            if methods == 0 {
                continue;
            }
            let m = rng.gen_range(0..methods);
            let p = lit(rng);
            let r =
                session.invoke_named(&recv, None, &format!("m{m}"), vec![Value::Int(p)], 5_000)?;
            let ExecStatus::Completed(v) = r.status else {
                return None;
            };
            let _ = writeln!(text, "assertEq({var}.m{m}({p}), {});", value_text(&v)?);
            if rng.gen_bool(0.5) {
                let b = session.get_field(recv.as_ref()?, "b")?.clone();
                let _ = writeln!(text, "assertEq({var}.b, {});", value_text(&b)?);
            }
        }
    }
    text.contains("assert").then_some(text)
}

fn class_methods(plans: &[ClassPlan], ci: usize) -> usize {
    let own = plans[ci].methods;
    match plans[ci].parent {
        Some(p) => own.max(class_methods(plans, p)),
        None => own,
    }
}

/// A random well-formed program with inner classes, private members,
/// constructors of various arities, and project tests that pass on it.
pub fn generate_program(seed: u64) -> GeneratedProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let n = rng.gen_range(1..=3);
        let mut plans = Vec::new();
        for i in 0..n {
            let parent = (i > 0 && rng.gen_bool(0.3)).then(|| rng.gen_range(0..i));
            let ctors = match rng.gen_range(0..4) {
                0 => vec![],
                1 => vec![(1, true)],
                2 => vec![(1, true), (2, rng.gen_bool(0.5))],
                _ => vec![(2, true)],
            };
            plans.push(ClassPlan {
                name: format!("K{i}"),
                parent,
                ctors,
                methods: rng.gen_range(1..=3),
                inner: (parent.is_none() && rng.gen_bool(0.6)).then(|| rng.gen_bool(0.5)),
            });
        }
        let source = render(&plans, &mut rng);
        let Ok(program) = parse(&source) else {
            continue;
        };
        let Ok(image) = check(&program) else { continue };
        let tests: Vec<String> = (0..rng.gen_range(2..5))
            .filter_map(|_| make_test(&image, &plans, &mut rng))
            .collect();
        if !tests.is_empty() {
            return GeneratedProgram { source, tests };
        }
    }
}
