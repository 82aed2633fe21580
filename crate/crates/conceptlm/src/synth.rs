//! Synthetic metamodel corpora for desk-scale experiments.
//!
//! Each domain is a small concept graph. A generated metamodel picks a
//! connected handful of concepts; every concept contributes a class whose
//! name, attributes and associations are drawn from per-concept pools. The
//! first pool entry is the usual name, the rest are synonyms; a small share
//! of names get a long-tail suffix so rare and one-off identifiers occur.

use std::collections::BTreeSet;
use std::path::Path;

use conceptlm_core::metamodel::{is_corpus_eligible, AssociationDef, AttributeDef, ClassDef, Identifier, Metamodel};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::canonical::to_canonical;
use crate::files::write_atomic;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberSpec {
    pub names: Vec<String>,
    /// Attribute type, or association target concept.
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptSpec {
    pub names: Vec<String>,
    pub attributes: Vec<MemberSpec>,
    pub associations: Vec<MemberSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDomainSpec {
    pub name: String,
    pub concepts: Vec<ConceptSpec>,
    pub min_classes: usize,
    pub max_classes: usize,
    /// Probability of keeping the usual (first) name of a pool.
    pub usual_name_rate: f64,
    /// Probability of replacing a name by a long-tail variant.
    pub tail_rate: f64,
    pub attribute_rate: f64,
    pub association_rate: f64,
}

const TAIL_SUFFIXES: &[&str] = &[
    "Kind", "Info", "Entry", "Item", "Record", "Element", "Spec", "Def", "Desc", "Data", "Unit", "Ref", "Impl",
    "Base", "Core", "Ext", "Node", "Part", "Decl", "Type", "Value", "Obj", "Model", "Meta",
];

impl SyntheticDomainSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("domain {}: {m}", self.name)));
        if self.concepts.is_empty() {
            return bad("no concepts".into());
        }
        if !(2 <= self.min_classes && self.min_classes <= self.max_classes && self.max_classes <= self.concepts.len().min(15)) {
            return bad("class bounds must satisfy 2 ≤ min ≤ max ≤ min(concepts, 15)".into());
        }
        let mut seen = BTreeSet::new();
        for c in &self.concepts {
            if c.names.is_empty() || c.attributes.iter().chain(&c.associations).any(|m| m.names.is_empty()) {
                return bad("empty name pool".into());
            }
            for n in &c.names {
                if !seen.insert(n.as_str()) {
                    return bad(format!("class name {n:?} used by two concepts"));
                }
            }
            for a in &c.associations {
                if self.concept_index(&a.kind).is_none() {
                    return bad(format!("association target {:?} is not a concept", a.kind));
                }
            }
        }
        Ok(())
    }

    fn concept_index(&self, key: &str) -> Option<usize> {
        self.concepts.iter().position(|c| c.names[0] == key)
    }

    fn neighbours(&self, i: usize) -> BTreeSet<usize> {
        let mut out: BTreeSet<usize> = self.concepts[i]
            .associations
            .iter()
            .filter_map(|a| self.concept_index(&a.kind))
            .collect();
        for (j, c) in self.concepts.iter().enumerate() {
            if c.associations.iter().any(|a| self.concept_index(&a.kind) == Some(i)) {
                out.insert(j);
            }
        }
        out.remove(&i);
        out
    }

    fn pick_name(&self, pool: &[String], rng: &mut ChaCha8Rng) -> String {
        let base = if pool.len() == 1 || rng.random::<f64>() < self.usual_name_rate {
            pool[0].clone()
        } else {
            pool[1..].choose(rng).expect("non-empty").clone()
        };
        if rng.random::<f64>() < self.tail_rate {
            format!("{base}{}", TAIL_SUFFIXES.choose(rng).expect("non-empty"))
        } else {
            base
        }
    }

    /// One eligible metamodel.
    pub fn generate(&self, id: &str, rng: &mut ChaCha8Rng) -> Result<Metamodel> {
        let n = rng.random_range(self.min_classes..=self.max_classes);
        let mut chosen = BTreeSet::new();
        chosen.insert(if rng.random::<f64>() < 0.8 { 0 } else { rng.random_range(0..self.concepts.len()) });
        while chosen.len() < n {
            let frontier: Vec<usize> = chosen
                .iter()
                .flat_map(|&c| self.neighbours(c))
                .filter(|c| !chosen.contains(c))
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let next = match frontier.choose(rng) {
                Some(&c) => c,
                None => {
                    let rest: Vec<usize> = (0..self.concepts.len()).filter(|c| !chosen.contains(c)).collect();
                    *rest.choose(rng).expect("n ≤ concept count")
                }
            };
            chosen.insert(next);
        }

        let class_names: Vec<(usize, String)> = chosen.iter().map(|&c| (c, self.pick_name(&self.concepts[c].names, rng))).collect();
        let name_of = |concept: usize| class_names.iter().find(|(c, _)| *c == concept).map(|(_, n)| n.clone());
        let mut classes = Vec::new();
        for (concept, name) in &class_names {
            let spec = &self.concepts[*concept];
            let mut class = ClassDef::new(Identifier::new(name.as_str())?);
            let mut used = BTreeSet::new();
            for a in &spec.attributes {
                if rng.random::<f64>() >= self.attribute_rate {
                    continue;
                }
                let attr = self.pick_name(&a.names, rng);
                if used.insert(attr.clone()) {
                    class.attributes.push(AttributeDef {
                        name: Identifier::new(attr)?,
                        type_name: Identifier::new(a.kind.as_str())?,
                    });
                }
            }
            for a in &spec.associations {
                let Some(target) = self.concept_index(&a.kind).and_then(name_of) else { continue };
                if rng.random::<f64>() >= self.association_rate {
                    continue;
                }
                class.associations.push(AssociationDef {
                    name: Identifier::new(self.pick_name(&a.names, rng))?,
                    target_class: Identifier::new(target)?,
                    is_containment: rng.random::<f64>() < 0.5,
                });
            }
            classes.push(class);
        }
        let m = Metamodel::new(id, classes)?;
        debug_assert!(is_corpus_eligible(&m));
        Ok(m)
    }
}

fn member(names: &[&str], kind: &str) -> MemberSpec {
    MemberSpec {
        names: names.iter().map(|s| s.to_string()).collect(),
        kind: kind.into(),
    }
}

fn concept(names: &[&str], attributes: Vec<MemberSpec>, associations: Vec<MemberSpec>) -> ConceptSpec {
    ConceptSpec {
        names: names.iter().map(|s| s.to_string()).collect(),
        attributes,
        associations,
    }
}

fn domain(name: &str, concepts: Vec<ConceptSpec>) -> SyntheticDomainSpec {
    SyntheticDomainSpec {
        name: name.into(),
        max_classes: concepts.len().min(7),
        concepts,
        min_classes: 2,
        usual_name_rate: 0.75,
        tail_rate: 0.06,
        attribute_rate: 0.7,
        association_rate: 0.85,
    }
}

pub fn state_machine() -> SyntheticDomainSpec {
    domain(
        "state-machine",
        vec![
            concept(
                &["StateMachine", "FSM", "Automaton"],
                vec![member(&["name", "title"], "EString"), member(&["version"], "EInt")],
                vec![
                    member(&["states", "nodes"], "State"),
                    member(&["transitions", "edges"], "Transition"),
                    member(&["initialState", "start"], "State"),
                    member(&["regions"], "Region"),
                ],
            ),
            concept(
                &["State", "Vertex"],
                vec![
                    member(&["name", "label"], "EString"),
                    member(&["isFinal", "final"], "EBoolean"),
                    member(&["isInitial", "initial"], "EBoolean"),
                ],
                vec![member(&["entry", "onEntry"], "Action"), member(&["exit", "onExit"], "Action")],
            ),
            concept(
                &["Transition", "Edge"],
                vec![member(&["trigger", "event"], "EString"), member(&["priority"], "EInt")],
                vec![
                    member(&["source", "from"], "State"),
                    member(&["target", "to"], "State"),
                    member(&["guard", "condition"], "Guard"),
                    member(&["effect", "action"], "Action"),
                ],
            ),
            concept(
                &["Action", "Behavior"],
                vec![member(&["body", "code"], "EString"), member(&["language"], "EString")],
                vec![],
            ),
            concept(&["Guard", "Constraint"], vec![member(&["expression", "condition"], "EString")], vec![]),
            concept(
                &["Region", "Compartment"],
                vec![member(&["name"], "EString")],
                vec![member(&["subvertices", "states"], "State")],
            ),
            concept(
                &["Event", "Signal"],
                vec![member(&["name"], "EString"), member(&["timestamp", "time"], "ELong")],
                vec![member(&["triggers"], "Transition")],
            ),
        ],
    )
}

pub fn petri_net() -> SyntheticDomainSpec {
    domain(
        "petri-net",
        vec![
            concept(
                &["PetriNet", "Net"],
                vec![member(&["name", "id"], "EString")],
                vec![
                    member(&["places"], "Place"),
                    member(&["transitions", "trans"], "Transition"),
                    member(&["arcs"], "Arc"),
                ],
            ),
            concept(
                &["Place", "Location"],
                vec![
                    member(&["name", "label"], "EString"),
                    member(&["tokens", "marking"], "EInt"),
                    member(&["capacity"], "EInt"),
                ],
                vec![member(&["outgoingArcs", "outArcs"], "Arc"), member(&["incomingArcs", "inArcs"], "Arc")],
            ),
            concept(
                &["Transition", "Firing"],
                vec![member(&["name", "label"], "EString"), member(&["enabled"], "EBoolean")],
                vec![member(&["outgoingArc", "outputs"], "Arc"), member(&["incomingArc", "inputs"], "Arc")],
            ),
            concept(
                &["Arc", "Flow"],
                vec![member(&["weight", "multiplicity"], "EInt")],
                vec![member(&["from", "source"], "Place"), member(&["to", "target"], "Transition")],
            ),
            concept(
                &["Token", "Mark"],
                vec![member(&["color", "colour"], "EString"), member(&["count"], "EInt")],
                vec![member(&["location", "place"], "Place")],
            ),
            concept(
                &["Marking", "Configuration"],
                vec![member(&["step"], "EInt")],
                vec![member(&["tokens"], "Token"), member(&["net"], "PetriNet")],
            ),
        ],
    )
}

pub fn library_catalog() -> SyntheticDomainSpec {
    domain(
        "library-catalog",
        vec![
            concept(
                &["Library", "Catalog"],
                vec![member(&["name"], "EString"), member(&["address", "location"], "EString")],
                vec![
                    member(&["books", "items"], "Book"),
                    member(&["members", "patrons"], "Member"),
                    member(&["loans"], "Loan"),
                    member(&["authors", "writers"], "Author"),
                ],
            ),
            concept(
                &["Book", "Publication"],
                vec![
                    member(&["title"], "EString"),
                    member(&["isbn", "ISBN"], "EString"),
                    member(&["year", "publicationYear"], "EInt"),
                    member(&["pages", "pageCount"], "EInt"),
                ],
                vec![member(&["authors", "writtenBy"], "Author"), member(&["publisher"], "Publisher")],
            ),
            concept(
                &["Author", "Writer"],
                vec![
                    member(&["firstName", "givenName"], "EString"),
                    member(&["lastName", "surname"], "EString"),
                    member(&["birthYear", "born"], "EInt"),
                ],
                vec![member(&["books", "works"], "Book")],
            ),
            concept(
                &["Member", "Borrower", "Patron"],
                vec![
                    member(&["memberId", "cardNumber"], "EString"),
                    member(&["email"], "EString"),
                    member(&["fullName", "name"], "EString"),
                ],
                vec![member(&["loans", "borrowings"], "Loan")],
            ),
            concept(
                &["Loan", "Borrowing"],
                vec![
                    member(&["dueDate", "due"], "EDate"),
                    member(&["returned", "isReturned"], "EBoolean"),
                    member(&["startDate"], "EDate"),
                ],
                vec![member(&["book", "item"], "Book"), member(&["borrower", "member"], "Member")],
            ),
            concept(
                &["Publisher", "Editor"],
                vec![member(&["name"], "EString"), member(&["country", "city"], "EString")],
                vec![member(&["published"], "Book")],
            ),
        ],
    )
}

pub fn builtin_domains() -> Vec<SyntheticDomainSpec> {
    vec![state_machine(), petri_net(), library_catalog()]
}

/// `n` metamodels cycling through `specs`, with ids `<domain>/<nnnn>.json`.
pub fn generate_corpus(specs: &[SyntheticDomainSpec], n: usize, seed: u64) -> Result<Vec<Metamodel>> {
    if specs.is_empty() {
        return Err(Error::Config("no synthetic domains".into()));
    }
    for s in specs {
        s.validate()?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).map(|i| i % specs.len()).collect();
    order.shuffle(&mut rng);
    order
        .into_iter()
        .enumerate()
        .map(|(i, d)| specs[d].generate(&format!("{}/{i:04}.json", specs[d].name), &mut rng))
        .collect()
}

/// Writes the corpus as canonical JSON files below `dir`.
pub fn run_generate_synthetic(specs: &[SyntheticDomainSpec], n: usize, seed: u64, dir: &Path) -> Result<Vec<Metamodel>> {
    if n == 0 {
        return Err(Error::Config("n must be at least 1".into()));
    }
    let corpus = generate_corpus(specs, n, seed)?;
    for m in &corpus {
        write_atomic(&dir.join(&m.id), to_canonical(m).as_bytes())?;
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_domains_are_valid() {
        for d in builtin_domains() {
            d.validate().unwrap();
        }
    }

    #[test]
    fn corpus_is_eligible_and_deterministic() {
        let a = generate_corpus(&builtin_domains(), 60, 5).unwrap();
        assert_eq!(a.len(), 60);
        assert!(a.iter().all(is_corpus_eligible));
        assert_eq!(a, generate_corpus(&builtin_domains(), 60, 5).unwrap());
        assert_ne!(a, generate_corpus(&builtin_domains(), 60, 6).unwrap());
    }

    #[test]
    fn bad_bounds_are_rejected() {
        let mut d = petri_net();
        d.min_classes = 1;
        assert!(d.validate().is_err());
    }
}
