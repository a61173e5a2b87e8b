//! The operation pool: everything a generated test may call.

use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::minilang::ast::{Literal, Visibility};
use crate::minilang::image::{CallableId, CallableKind, ClassId};
use crate::minilang::{ProgramImage, Ty};
use crate::transforms::SEED_CLASS;

use super::GenError;

pub const INT_POOL: [i64; 6] = [-1, 0, 1, 2, 10, 100];
pub const STR_POOL: [&str; 4] = ["", "a", "a b  c", "hi hi"];
pub const BOOL_POOL: [bool; 2] = [true, false];

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OpKind {
    Ctor {
        class: String,
    },
    /// Instance methods take their receiver as the first input.
    Method {
        class: String,
        name: String,
        receiver: bool,
    },
    Seed {
        name: String,
    },
    Literal(Literal),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Operation {
    pub kind: OpKind,
    /// Parameter types, excluding the receiver.
    pub params: Vec<Ty>,
    pub result: Ty,
    pub callable: Option<CallableId>,
    /// Dispatch selector of instance methods.
    pub selector: Option<u32>,
    /// Declaring class of instance methods.
    pub receiver: Option<ClassId>,
}

impl Operation {
    pub fn is_literal(&self) -> bool {
        matches!(self.kind, OpKind::Literal(_))
    }

    /// Input types in order: receiver (if any) then parameters.
    pub fn input_types(&self) -> Vec<Ty> {
        self.receiver
            .map(Ty::Class)
            .into_iter()
            .chain(self.params.iter().copied())
            .collect()
    }

    pub fn label(&self) -> String {
        match &self.kind {
            OpKind::Ctor { class } => format!("{class}.init/{}", self.params.len()),
            OpKind::Method { class, name, .. } => format!("{class}.{name}/{}", self.params.len()),
            OpKind::Seed { name } => format!("{SEED_CLASS}.{name}"),
            OpKind::Literal(l) => crate::minilang::printer::literal_text(l),
        }
    }
}

fn literal_ops() -> Vec<Operation> {
    let lit = |l: Literal, ty: Ty| Operation {
        kind: OpKind::Literal(l),
        params: Vec::new(),
        result: ty,
        callable: None,
        selector: None,
        receiver: None,
    };
    let mut out: Vec<Operation> = INT_POOL
        .iter()
        .map(|&i| lit(Literal::Int(i), Ty::Int))
        .collect();
    out.extend(
        STR_POOL
            .iter()
            .map(|s| lit(Literal::Str(s.to_string()), Ty::Str)),
    );
    out.extend(BOOL_POOL.iter().map(|&b| lit(Literal::Bool(b), Ty::Bool)));
    out.push(lit(Literal::Null, Ty::Null));
    out
}

/// Public constructors and methods of every class a test can name, plus
/// `ObjectSeeds` methods and the primitive pools. Operations whose
/// signatures mention a class hidden from tests are left out.
pub fn harvest_operations(
    image: &ProgramImage,
    target_class: &str,
) -> Result<Vec<Operation>, GenError> {
    if image.class_id(target_class).is_none() {
        return Err(GenError::UnknownClass(target_class.to_string()));
    }
    let visible = |ty: Ty| match ty {
        Ty::Class(c) => image.class_visible_to_tests(c),
        _ => true,
    };
    let mut out = Vec::new();
    for (cid, info) in image.classes.iter().enumerate() {
        if !image.class_visible_to_tests(cid) {
            continue;
        }
        let seeds = info.name == SEED_CLASS;
        if !seeds {
            for &c in info.ctors.values() {
                let callable = image.callable(c);
                if callable.vis == Visibility::Public && callable.params.iter().all(|&t| visible(t))
                {
                    out.push(Operation {
                        kind: OpKind::Ctor {
                            class: info.name.clone(),
                        },
                        params: callable.params.clone(),
                        result: Ty::Class(cid),
                        callable: Some(c),
                        selector: None,
                        receiver: None,
                    });
                }
            }
        }
        for &m in &info.methods {
            let callable = image.callable(m);
            if callable.vis != Visibility::Public
                || !callable.params.iter().all(|&t| visible(t))
                || !visible(callable.ret)
            {
                continue;
            }
            let is_static = callable.kind == CallableKind::Static;
            let kind = if seeds && is_static {
                OpKind::Seed {
                    name: callable.name.clone(),
                }
            } else {
                OpKind::Method {
                    class: info.name.clone(),
                    name: callable.name.clone(),
                    receiver: !is_static,
                }
            };
            out.push(Operation {
                kind,
                params: callable.params.clone(),
                result: callable.ret,
                callable: Some(m),
                selector: (!is_static)
                    .then(|| image.selectors[&(callable.name.clone(), callable.arity())]),
                receiver: (!is_static).then_some(cid),
            });
        }
    }
    out.extend(literal_ops());
    Ok(out)
}

/// A random literal of a primitive type; `null` for reference types.
pub fn random_literal(rng: &mut impl Rng, ty: Ty) -> Literal {
    match ty {
        Ty::Int => Literal::Int(*INT_POOL.choose(rng).expect("pool")),
        Ty::Str => Literal::Str(STR_POOL.choose(rng).expect("pool").to_string()),
        Ty::Bool => Literal::Bool(*BOOL_POOL.choose(rng).expect("pool")),
        _ => Literal::Null,
    }
}

/// Harvested operations indexed for generation.
pub struct OpTable {
    /// Non-literal operations.
    pub ops: Vec<Arc<Operation>>,
    /// For each class, itself and all its subclasses.
    pub subclasses: Vec<Vec<ClassId>>,
    /// Operations whose result is assignable to each class.
    pub producers: HashMap<ClassId, Vec<usize>>,
    /// The operation calling the target directly, when tests may call it.
    pub target_op: Option<usize>,
    /// Operations on the target's class (its constructors and methods).
    pub target_class_ops: Vec<usize>,
}

impl OpTable {
    pub fn new(
        image: &ProgramImage,
        target_class: &str,
        target: Option<CallableId>,
    ) -> Result<OpTable, GenError> {
        let ops: Vec<Arc<Operation>> = harvest_operations(image, target_class)?
            .into_iter()
            .filter(|o| !o.is_literal())
            .map(Arc::new)
            .collect();
        let n = image.classes.len();
        let subclasses: Vec<Vec<ClassId>> = (0..n)
            .map(|c| (0..n).filter(|&s| image.is_subclass(s, c)).collect())
            .collect();
        let mut producers: HashMap<ClassId, Vec<usize>> = HashMap::new();
        for (i, op) in ops.iter().enumerate() {
            if let Ty::Class(r) = op.result {
                for c in 0..n {
                    if image.is_subclass(r, c) {
                        producers.entry(c).or_default().push(i);
                    }
                }
            }
        }
        let target_op = target.and_then(|t| ops.iter().position(|o| o.callable == Some(t)));
        let tc = image.class_id(target_class);
        let target_class_ops = ops
            .iter()
            .enumerate()
            .filter(|(_, o)| {
                o.receiver == tc
                    || (matches!(o.kind, OpKind::Ctor { .. })
                        && o.result == tc.map(Ty::Class).unwrap_or(Ty::Void))
            })
            .map(|(i, _)| i)
            .collect();
        Ok(OpTable {
            ops,
            subclasses,
            producers,
            target_op,
            target_class_ops,
        })
    }

    pub fn producers_of(&self, class: ClassId) -> &[usize] {
        self.producers.get(&class).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minilang::{check, parse};

    #[test]
    fn counts_public_members() {
        let image = check(&parse("class A { pub init(int x) { } pub int f() { return 1; } pub void g() { } priv int h() { return 2; } }").unwrap()).unwrap();
        let ops = harvest_operations(&image, "A").unwrap();
        assert_eq!(ops.iter().filter(|o| !o.is_literal()).count(), 3);
        assert_eq!(ops.iter().filter(|o| o.is_literal()).count(), 13);
        assert!(matches!(
            harvest_operations(&image, "B"),
            Err(GenError::UnknownClass(_))
        ));
    }

    #[test]
    fn hidden_inner_classes_are_skipped() {
        let image = check(
            &parse(
                "class O { pub int f() { return 1; } priv class I { pub int g() { return 2; } } }",
            )
            .unwrap(),
        )
        .unwrap();
        let ops = harvest_operations(&image, "O").unwrap();
        let labels: Vec<_> = ops
            .iter()
            .filter(|o| !o.is_literal())
            .map(|o| o.label())
            .collect();
        assert_eq!(labels, vec!["O.init/0", "O.f/0"]);
    }
}
