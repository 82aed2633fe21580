//! Canonical JSON interchange format:
//!
//! ```json
//! {"id": "fsm", "classes": [{"name": "State",
//!   "attributes": [{"name": "isFinal", "type": "EBoolean"}],
//!   "associations": [{"name": "next", "target": "State", "containment": false}]}]}
//! ```
//!
//! Unknown fields are rejected. `id` may be omitted.

use conceptlm_core::metamodel::{AssociationDef, AttributeDef, ClassDef, Identifier, Metamodel};
use serde::{Deserialize, Serialize};

use crate::Result;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub id: String,
    pub classes: Vec<Class>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Class {
    pub name: String,
    pub attributes: Vec<Attribute>,
    pub associations: Vec<Association>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Attribute {
    pub name: String,
    #[serde(rename = "type")]
    pub type_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Association {
    pub name: String,
    pub target: String,
    pub containment: bool,
}

impl Document {
    /// Validated metamodel; fails on bad identifiers, duplicates and
    /// dangling targets.
    pub fn to_metamodel(&self) -> Result<Metamodel> {
        let classes = self
            .classes
            .iter()
            .map(|c| {
                Ok(ClassDef {
                    name: Identifier::new(c.name.as_str())?,
                    attributes: c
                        .attributes
                        .iter()
                        .map(|a| {
                            Ok(AttributeDef {
                                name: Identifier::new(a.name.as_str())?,
                                type_name: Identifier::new(a.type_name.as_str())?,
                            })
                        })
                        .collect::<Result<_>>()?,
                    associations: c
                        .associations
                        .iter()
                        .map(|a| {
                            Ok(AssociationDef {
                                name: Identifier::new(a.name.as_str())?,
                                target_class: Identifier::new(a.target.as_str())?,
                                is_containment: a.containment,
                            })
                        })
                        .collect::<Result<_>>()?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Metamodel::new(self.id.clone(), classes)?)
    }

    pub fn from_metamodel(m: &Metamodel) -> Self {
        Self {
            id: m.id.clone(),
            classes: m
                .classes
                .iter()
                .map(|c| Class {
                    name: c.name.to_string(),
                    attributes: c
                        .attributes
                        .iter()
                        .map(|a| Attribute {
                            name: a.name.to_string(),
                            type_name: a.type_name.to_string(),
                        })
                        .collect(),
                    associations: c
                        .associations
                        .iter()
                        .map(|a| Association {
                            name: a.name.to_string(),
                            target: a.target_class.to_string(),
                            containment: a.is_containment,
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

pub fn parse_canonical(text: &str) -> Result<Metamodel> {
    serde_json::from_str::<Document>(text)?.to_metamodel()
}

pub fn to_canonical(m: &Metamodel) -> String {
    serde_json::to_string_pretty(&Document::from_metamodel(m)).expect("plain data serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;

    #[test]
    fn empty_document() {
        let m = parse_canonical(r#"{"classes":[]}"#).unwrap();
        assert!(m.classes.is_empty());
        assert_eq!(m.id, "");
    }

    #[test]
    fn dangling_target_is_rejected() {
        let doc = r#"{"classes":[{"name":"A","attributes":[],"associations":[{"name":"b","target":"B","containment":false}]}]}"#;
        assert!(matches!(
            parse_canonical(doc),
            Err(Error::Model(conceptlm_core::Error::DanglingTarget { .. }))
        ));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let doc = r#"{"classes":[{"name":"A","attributes":[],"associations":[],"abstract":true}]}"#;
        assert!(matches!(parse_canonical(doc), Err(Error::Schema(_))));
    }

    #[test]
    fn duplicate_class_is_rejected() {
        let doc = r#"{"id":"x","classes":[{"name":"A","attributes":[],"associations":[]},{"name":"A","attributes":[],"associations":[]}]}"#;
        assert!(matches!(
            parse_canonical(doc),
            Err(Error::Model(conceptlm_core::Error::DuplicateClass(_)))
        ));
    }

    #[test]
    fn serialize_parse_identity() {
        let doc = r#"{"id":"fsm","classes":[{"name":"State","attributes":[{"name":"isFinal","type":"EBoolean"}],"associations":[{"name":"next","target":"State","containment":true}]}]}"#;
        let back = to_canonical(&parse_canonical(doc).unwrap());
        let a: serde_json::Value = serde_json::from_str(doc).unwrap();
        let b: serde_json::Value = serde_json::from_str(&back).unwrap();
        assert_eq!(a, b);
    }
}
