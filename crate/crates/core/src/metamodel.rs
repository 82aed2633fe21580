//! In-memory metamodel representation.
//!
//! A [`Metamodel`] is an ordered list of classes, each carrying its attributes
//! and outgoing associations in source declaration order. Generalizations,
//! operations and multiplicities are not represented.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A named-element identifier. Casing is preserved verbatim.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Identifier(String);

impl Identifier {
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if text.is_empty() || text.chars().any(char::is_whitespace) {
            return Err(Error::InvalidIdentifier(text));
        }
        Ok(Self(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl TryFrom<String> for Identifier {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        Self::new(value)
    }
}

impl From<Identifier> for String {
    fn from(value: Identifier) -> Self {
        value.0
    }
}

impl fmt::Display for Identifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for Identifier {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeDef {
    pub name: Identifier,
    pub type_name: Identifier,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssociationDef {
    pub name: Identifier,
    pub target_class: Identifier,
    /// Parsed from the source but never encoded.
    pub is_containment: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDef {
    pub name: Identifier,
    pub attributes: Vec<AttributeDef>,
    pub associations: Vec<AssociationDef>,
}

impl ClassDef {
    pub fn new(name: Identifier) -> Self {
        Self {
            name,
            attributes: Vec::new(),
            associations: Vec::new(),
        }
    }

    /// Number of named elements owned by this class, the class itself included.
    pub fn element_count(&self) -> usize {
        1 + self.attributes.len() + self.associations.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metamodel {
    pub id: String,
    pub classes: Vec<ClassDef>,
}

impl Metamodel {
    /// Builds a metamodel and checks its invariants.
    pub fn new(id: impl Into<String>, classes: Vec<ClassDef>) -> Result<Self> {
        let m = Self {
            id: id.into(),
            classes,
        };
        m.validate()?;
        Ok(m)
    }

    /// Unique class names, unique attribute names per class, resolvable
    /// association targets.
    pub fn validate(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        for class in &self.classes {
            if !names.insert(class.name.as_str()) {
                return Err(Error::DuplicateClass(class.name.to_string()));
            }
        }
        for class in &self.classes {
            let mut attrs = BTreeSet::new();
            for attr in &class.attributes {
                if !attrs.insert(attr.name.as_str()) {
                    return Err(Error::DuplicateAttribute {
                        class: class.name.to_string(),
                        attribute: attr.name.to_string(),
                    });
                }
            }
            for assoc in &class.associations {
                if !names.contains(assoc.target_class.as_str()) {
                    return Err(Error::DanglingTarget {
                        class: class.name.to_string(),
                        association: assoc.name.to_string(),
                        target: assoc.target_class.to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c.name.as_str() == name)
    }

    pub fn attribute_count(&self) -> usize {
        self.classes.iter().map(|c| c.attributes.len()).sum()
    }

    pub fn association_count(&self) -> usize {
        self.classes.iter().map(|c| c.associations.len()).sum()
    }

    /// Classes + attributes + associations.
    pub fn element_count(&self) -> usize {
        self.classes.iter().map(ClassDef::element_count).sum()
    }

    /// Every named element in declaration order: a class, then its
    /// attributes, then its associations.
    pub fn element_refs(&self) -> Vec<ElementRef> {
        let mut refs = Vec::with_capacity(self.element_count());
        for (ci, class) in self.classes.iter().enumerate() {
            refs.push(ElementRef::class(ci));
            refs.extend((0..class.attributes.len()).map(|ai| ElementRef::attribute(ci, ai)));
            refs.extend((0..class.associations.len()).map(|ai| ElementRef::association(ci, ai)));
        }
        refs
    }

    /// The identifier an element reference names, if it resolves.
    pub fn resolve(&self, r: ElementRef) -> Result<&Identifier> {
        let class = self
            .classes
            .get(r.class_index)
            .ok_or_else(|| Error::UnresolvedRef(r.to_string()))?;
        let name = match r.kind {
            ElementKind::Class => Some(&class.name),
            ElementKind::Attribute => class.attributes.get(r.member_index).map(|a| &a.name),
            ElementKind::Association => class.associations.get(r.member_index).map(|a| &a.name),
        };
        name.ok_or_else(|| Error::UnresolvedRef(r.to_string()))
    }

    /// Number of associations targeting each class, in class order.
    pub fn incoming_counts(&self) -> Vec<usize> {
        let mut counts = alloc::vec![0usize; self.classes.len()];
        for class in &self.classes {
            for assoc in &class.associations {
                if let Some(t) = self.class_index(assoc.target_class.as_str()) {
                    counts[t] += 1;
                }
            }
        }
        counts
    }

    /// Undirected class adjacency induced by associations (self-loops excluded).
    pub fn class_links(&self) -> Vec<BTreeSet<usize>> {
        let mut links = alloc::vec![BTreeSet::new(); self.classes.len()];
        for (src, class) in self.classes.iter().enumerate() {
            for assoc in &class.associations {
                if let Some(dst) = self.class_index(assoc.target_class.as_str()) {
                    if dst != src {
                        links[src].insert(dst);
                        links[dst].insert(src);
                    }
                }
            }
        }
        links
    }
}

/// Kind of a named metamodel element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    Class,
    Attribute,
    Association,
}

impl ElementKind {
    pub const ALL: [ElementKind; 3] = [Self::Class, Self::Attribute, Self::Association];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Class => "class",
            Self::Attribute => "attribute",
            Self::Association => "association",
        }
    }
}

impl core::str::FromStr for ElementKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "class" => Ok(Self::Class),
            "attribute" => Ok(Self::Attribute),
            "association" => Ok(Self::Association),
            other => Err(Error::UnknownKind(other.to_string())),
        }
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Points at one named element of a metamodel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ElementRef {
    pub kind: ElementKind,
    pub class_index: usize,
    /// Ignored for class references.
    #[serde(default)]
    pub member_index: usize,
}

impl ElementRef {
    pub fn class(class_index: usize) -> Self {
        Self {
            kind: ElementKind::Class,
            class_index,
            member_index: 0,
        }
    }

    pub fn attribute(class_index: usize, member_index: usize) -> Self {
        Self {
            kind: ElementKind::Attribute,
            class_index,
            member_index,
        }
    }

    pub fn association(class_index: usize, member_index: usize) -> Self {
        Self {
            kind: ElementKind::Association,
            class_index,
            member_index,
        }
    }
}

impl fmt::Display for ElementRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ElementKind::Class => write!(f, "class[{}]", self.class_index),
            kind => write!(f, "{}[{}.{}]", kind, self.class_index, self.member_index),
        }
    }
}

/// Corpus filter: keep metamodels with 2 to 15 classes.
pub fn is_corpus_eligible(m: &Metamodel) -> bool {
    is_eligible_with(m, 2, 15)
}

pub fn is_eligible_with(m: &Metamodel, min_classes: usize, max_classes: usize) -> bool {
    (min_classes..=max_classes).contains(&m.classes.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CorpusStats {
    pub identifier_count: usize,
    pub type_count: usize,
    pub hapax_count: usize,
}

/// Occurrences of every identifier (class, attribute and association names).
pub fn identifier_counts<'a>(
    corpus: impl IntoIterator<Item = &'a Metamodel>,
) -> BTreeMap<String, usize> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for m in corpus {
        for class in &m.classes {
            *counts.entry(class.name.to_string()).or_default() += 1;
            for attr in &class.attributes {
                *counts.entry(attr.name.to_string()).or_default() += 1;
            }
            for assoc in &class.associations {
                *counts.entry(assoc.name.to_string()).or_default() += 1;
            }
        }
    }
    counts
}

pub fn corpus_stats<'a>(corpus: impl IntoIterator<Item = &'a Metamodel>) -> CorpusStats {
    let counts = identifier_counts(corpus);
    CorpusStats {
        identifier_count: counts.values().sum(),
        type_count: counts.len(),
        hapax_count: counts.values().filter(|&&c| c == 1).count(),
    }
}
