#![allow(dead_code)]

use conceptlm_core::metamodel::{AssociationDef, AttributeDef, ClassDef, Identifier, Metamodel};
use proptest::prelude::*;

/// Names that stress escaping alongside ordinary ones.
pub const NAME_POOL: &[&str] = &[
    "State", "Transition", "FSM", "Place", "Token", "Arc", "Node", "Edge", "Book", "Author",
    "name", "id", "isFinal", "target", "source", "items", "x", "NAME", "CLS", "(", ")",
    "<mask>", "@at", "@@", "Élément", "größe", "数据", "a_b", "A1", "value-2",
];

pub fn ident() -> impl Strategy<Value = Identifier> {
    prop_oneof![
        3 => proptest::sample::select(NAME_POOL).prop_map(|s| Identifier::new(s).unwrap()),
        1 => "[A-Za-z_@(<][A-Za-z0-9_>)]{0,8}".prop_map(|s| Identifier::new(s).unwrap()),
    ]
}

fn unique(names: Vec<Identifier>) -> Vec<Identifier> {
    let mut seen = std::collections::BTreeSet::new();
    names.into_iter().filter(|n| seen.insert(n.clone())).collect()
}

/// Valid metamodels with `1..=max_classes` classes.
pub fn metamodel(max_classes: usize) -> impl Strategy<Value = Metamodel> {
    proptest::collection::vec(ident(), 1..=max_classes)
        .prop_map(unique)
        .prop_flat_map(|class_names| {
            let n = class_names.len();
            let per_class = (
                proptest::collection::vec((ident(), ident()), 0..4),
                proptest::collection::vec((ident(), 0..n, any::<bool>()), 0..4),
            );
            (Just(class_names), proptest::collection::vec(per_class, n))
        })
        .prop_map(|(names, members)| {
            let classes = names
                .iter()
                .zip(members)
                .map(|(name, (attrs, assocs))| {
                    let mut seen = std::collections::BTreeSet::new();
                    ClassDef {
                        name: name.clone(),
                        attributes: attrs
                            .into_iter()
                            .filter(|(n, _)| seen.insert(n.clone()))
                            .map(|(name, type_name)| AttributeDef { name, type_name })
                            .collect(),
                        associations: assocs
                            .into_iter()
                            .map(|(name, t, c)| AssociationDef {
                                name,
                                target_class: names[t].clone(),
                                is_containment: c,
                            })
                            .collect(),
                    }
                })
                .collect();
            Metamodel::new("generated", classes).unwrap()
        })
}

/// Metamodels with 2..=max classes (the corpus eligibility lower bound).
pub fn eligible_metamodel(max_classes: usize) -> impl Strategy<Value = Metamodel> {
    metamodel(max_classes).prop_filter("at least two classes", |m| m.classes.len() >= 2)
}
