//! Ecore XMI reader.
//!
//! Classes are collected from every `eClassifiers` element of type `EClass`
//! in document order, descending into `eSubpackages`. Attributes and
//! references come from `eStructuralFeatures`. Supertypes, operations,
//! annotations, data types and enumerations are skipped.

use conceptlm_core::metamodel::{AssociationDef, AttributeDef, ClassDef, Identifier, Metamodel};
use roxmltree::{Document, Node};

use crate::{Error, Result};

const XSI: &str = "http://www.w3.org/2001/XMLSchema-instance";

/// Type name used when an attribute declares its type only through a
/// generic type we do not model.
pub const UNKNOWN_TYPE: &str = "EJavaObject";

fn xsi_type<'a>(n: &Node<'a, '_>) -> Option<&'a str> {
    let t = n.attribute((XSI, "type")).or_else(|| n.attribute("type"))?;
    Some(t.rsplit(':').next().unwrap_or(t))
}

/// Last path segment of an `eType` reference, e.g. `#//State`,
/// `#//sub/State` or `ecore:EDataType http://…/Ecore#//EString`.
fn type_ref_name(reference: &str) -> Option<&str> {
    let reference = reference.split_whitespace().last()?;
    let name = reference.rsplit(['/', '#']).next()?;
    (!name.is_empty()).then_some(name)
}

fn feature_type<'a>(n: &Node<'a, '_>) -> Option<&'a str> {
    if let Some(t) = n.attribute("eType") {
        return type_ref_name(t);
    }
    n.children()
        .find(|c| c.has_tag_name("eGenericType"))
        .and_then(|g| g.attribute("eClassifier"))
        .and_then(type_ref_name)
}

fn ident(text: Option<&str>, what: &str) -> Result<Identifier> {
    let text = text.unwrap_or("");
    Identifier::new(text).map_err(|_| Error::Xml(format!("{what} has an invalid name {text:?}")))
}

fn collect_classes(package: Node, out: &mut Vec<ClassDef>) -> Result<()> {
    for child in package.children().filter(Node::is_element) {
        match child.tag_name().name() {
            "eClassifiers" if xsi_type(&child) == Some("EClass") => out.push(parse_class(child)?),
            "eSubpackages" => collect_classes(child, out)?,
            _ => {}
        }
    }
    Ok(())
}

fn parse_class(node: Node) -> Result<ClassDef> {
    let mut class = ClassDef::new(ident(node.attribute("name"), "class")?);
    for f in node.children().filter(|c| c.has_tag_name("eStructuralFeatures")) {
        let name = ident(f.attribute("name"), &format!("feature of class {}", class.name))?;
        match xsi_type(&f) {
            Some("EAttribute") => {
                let type_name = Identifier::new(feature_type(&f).unwrap_or(UNKNOWN_TYPE))?;
                class.attributes.push(AttributeDef { name, type_name });
            }
            Some("EReference") => {
                let target = feature_type(&f).ok_or_else(|| {
                    conceptlm_core::Error::DanglingTarget {
                        class: class.name.to_string(),
                        association: name.to_string(),
                        target: String::new(),
                    }
                })?;
                class.associations.push(AssociationDef {
                    name,
                    target_class: Identifier::new(target)?,
                    is_containment: f.attribute("containment") == Some("true"),
                });
            }
            _ => {}
        }
    }
    Ok(class)
}

/// Parses an Ecore document whose root is an `EPackage` (or an `XMI`
/// wrapper around packages).
pub fn parse_xmi(bytes: &[u8], id: &str) -> Result<Metamodel> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Xml(e.to_string()))?;
    let doc = Document::parse(text).map_err(|e| Error::Xml(e.to_string()))?;
    let root = doc.root_element();
    let packages: Vec<Node> = if root.tag_name().name() == "EPackage" {
        vec![root]
    } else {
        root.children().filter(|c| c.is_element() && c.tag_name().name() == "EPackage").collect()
    };
    if packages.is_empty() {
        return Err(Error::Xml("no EPackage element".into()));
    }
    let mut classes = Vec::new();
    for p in packages {
        collect_classes(p, &mut classes)?;
    }
    Ok(Metamodel::new(id, classes)?)
}
