//! Metamodel trees and their flattened surface text.
//!
//! A metamodel becomes a tree rooted in a `MODEL` node with one `CLS`
//! subtree per class. Each `CLS` node has exactly three children: `NAME`
//! (one leaf), `ATTRS` (one `ATTR` per attribute, leaves `type name`) and
//! `ASSOCS` (one `ASSOC` per association, leaves `target name`).
//!
//! The surface form is a parenthesized prefix rendering:
//!
//! ```text
//! ( MM ( CLS ( NAME State ) ( ATTRS ( ATTR EBoolean isFinal ) ) ( ASSOCS ) ) )
//! ```
//!
//! Identifiers that would read as structure (a keyword, a parenthesis or the
//! mask token) or that start with `@` are written with an extra `@` prefix.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::metamodel::{AssociationDef, AttributeDef, ClassDef, ElementKind, ElementRef, Identifier, Metamodel};
use crate::{Error, Result};

pub const MASK: &str = "<mask>";
pub const OPEN: &str = "(";
pub const CLOSE: &str = ")";
pub const ESCAPE: char = '@';

pub const KW_MODEL: &str = "MM";
pub const KW_CLASS: &str = "CLS";
pub const KW_NAME: &str = "NAME";
pub const KW_ATTRS: &str = "ATTRS";
pub const KW_ATTR: &str = "ATTR";
pub const KW_ASSOCS: &str = "ASSOCS";
pub const KW_ASSOC: &str = "ASSOC";

pub const KEYWORDS: [&str; 7] = [
    KW_MODEL, KW_CLASS, KW_NAME, KW_ATTRS, KW_ATTR, KW_ASSOCS, KW_ASSOC,
];

/// True for words that belong to the surface grammar rather than to an identifier.
pub fn is_structural(word: &str) -> bool {
    word == OPEN || word == CLOSE || word == MASK || KEYWORDS.contains(&word)
}

pub fn escape(ident: &str) -> String {
    if is_structural(ident) || ident.starts_with(ESCAPE) {
        let mut s = String::with_capacity(ident.len() + 1);
        s.push(ESCAPE);
        s.push_str(ident);
        s
    } else {
        ident.to_string()
    }
}

/// Inverse of [`escape`]. Returns `None` for bare structural words.
pub fn unescape(word: &str) -> Option<&str> {
    if is_structural(word) {
        None
    } else if let Some(rest) = word.strip_prefix(ESCAPE) {
        Some(rest)
    } else {
        Some(word)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Model,
    Cls,
    Name,
    Attrs,
    Attr,
    Assocs,
    Assoc,
    Leaf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNode {
    pub kind: NodeKind,
    /// Set on leaves only.
    pub text: Option<Identifier>,
    pub children: Vec<TreeNode>,
}

impl TreeNode {
    fn inner(kind: NodeKind, children: Vec<TreeNode>) -> Self {
        Self {
            kind,
            text: None,
            children,
        }
    }

    pub fn leaf(text: Identifier) -> Self {
        Self {
            kind: NodeKind::Leaf,
            text: Some(text),
            children: Vec::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(TreeNode::node_count).sum::<usize>()
    }
}

pub fn build_tree(m: &Metamodel) -> TreeNode {
    let classes = m
        .classes
        .iter()
        .map(|class| {
            let attrs = class
                .attributes
                .iter()
                .map(|a| {
                    TreeNode::inner(
                        NodeKind::Attr,
                        alloc::vec![TreeNode::leaf(a.type_name.clone()), TreeNode::leaf(a.name.clone())],
                    )
                })
                .collect();
            let assocs = class
                .associations
                .iter()
                .map(|a| {
                    TreeNode::inner(
                        NodeKind::Assoc,
                        alloc::vec![TreeNode::leaf(a.target_class.clone()), TreeNode::leaf(a.name.clone())],
                    )
                })
                .collect();
            TreeNode::inner(
                NodeKind::Cls,
                alloc::vec![
                    TreeNode::inner(NodeKind::Name, alloc::vec![TreeNode::leaf(class.name.clone())]),
                    TreeNode::inner(NodeKind::Attrs, attrs),
                    TreeNode::inner(NodeKind::Assocs, assocs),
                ],
            )
        })
        .collect();
    TreeNode::inner(NodeKind::Model, classes)
}

/// Whitespace-separated token stream of a flattened tree.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SurfaceText {
    pub tokens: Vec<String>,
}

impl SurfaceText {
    pub fn from_line(line: &str) -> Self {
        Self {
            tokens: line.split_whitespace().map(str::to_string).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn mask_count(&self) -> usize {
        self.tokens.iter().filter(|t| *t == MASK).count()
    }

    pub fn mask_position(&self) -> Option<usize> {
        self.tokens.iter().position(|t| t == MASK)
    }

    /// Token ranges of the top-level `( CLS ... )` subtrees.
    pub fn class_spans(&self) -> Vec<Range<usize>> {
        let mut spans = Vec::new();
        let mut depth = 0usize;
        let mut start = 0usize;
        for (i, tok) in self.tokens.iter().enumerate() {
            match tok.as_str() {
                OPEN => {
                    depth += 1;
                    if depth == 2 {
                        start = i;
                    }
                }
                CLOSE => {
                    if depth == 2 {
                        spans.push(start..i + 1);
                    }
                    depth = depth.saturating_sub(1);
                }
                _ => {}
            }
        }
        spans
    }

    /// Drops the class subtrees whose index is not kept.
    pub fn retain_classes(&self, mut keep: impl FnMut(usize) -> bool) -> SurfaceText {
        let spans = self.class_spans();
        let mut out = Vec::with_capacity(self.tokens.len());
        let mut cursor = 0;
        for (ci, span) in spans.iter().enumerate() {
            out.extend_from_slice(&self.tokens[cursor..span.start]);
            if keep(ci) {
                out.extend_from_slice(&self.tokens[span.clone()]);
            }
            cursor = span.end;
        }
        out.extend_from_slice(&self.tokens[cursor..]);
        SurfaceText { tokens: out }
    }
}

impl fmt::Display for SurfaceText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, tok) in self.tokens.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            f.write_str(tok)?;
        }
        Ok(())
    }
}

fn keyword(kind: NodeKind) -> &'static str {
    match kind {
        NodeKind::Model => KW_MODEL,
        NodeKind::Cls => KW_CLASS,
        NodeKind::Name => KW_NAME,
        NodeKind::Attrs => KW_ATTRS,
        NodeKind::Attr => KW_ATTR,
        NodeKind::Assocs => KW_ASSOCS,
        NodeKind::Assoc => KW_ASSOC,
        NodeKind::Leaf => unreachable!("leaves carry no keyword"),
    }
}

fn kind_of(word: &str) -> Option<NodeKind> {
    Some(match word {
        KW_MODEL => NodeKind::Model,
        KW_CLASS => NodeKind::Cls,
        KW_NAME => NodeKind::Name,
        KW_ATTRS => NodeKind::Attrs,
        KW_ATTR => NodeKind::Attr,
        KW_ASSOCS => NodeKind::Assocs,
        KW_ASSOC => NodeKind::Assoc,
        _ => return None,
    })
}

pub fn flatten(t: &TreeNode) -> SurfaceText {
    fn walk(t: &TreeNode, out: &mut Vec<String>) {
        if t.kind == NodeKind::Leaf {
            let text = t.text.as_ref().map(Identifier::as_str).unwrap_or_default();
            out.push(escape(text));
            return;
        }
        out.push(OPEN.to_string());
        out.push(keyword(t.kind).to_string());
        for child in &t.children {
            walk(child, out);
        }
        out.push(CLOSE.to_string());
    }
    let mut tokens = Vec::new();
    walk(t, &mut tokens);
    SurfaceText { tokens }
}

struct SurfaceParser<'a> {
    tokens: &'a [String],
    pos: usize,
}

impl<'a> SurfaceParser<'a> {
    fn err(&self, msg: &str) -> Error {
        Error::Surface(alloc::format!("{msg} at token {}", self.pos))
    }

    fn next(&mut self) -> Result<&'a str> {
        let tok = self
            .tokens
            .get(self.pos)
            .ok_or_else(|| self.err("unexpected end of input"))?;
        self.pos += 1;
        Ok(tok)
    }

    fn peek(&self) -> Option<&'a str> {
        self.tokens.get(self.pos).map(String::as_str)
    }

    fn expect(&mut self, want: &str) -> Result<()> {
        let got = self.next()?;
        if got == want {
            Ok(())
        } else {
            self.pos -= 1;
            Err(self.err(&alloc::format!("expected {want:?}, found {got:?}")))
        }
    }

    fn leaf(&mut self) -> Result<TreeNode> {
        let word = self.next()?;
        let text = unescape(word).ok_or_else(|| {
            self.pos -= 1;
            self.err(&alloc::format!("keyword {word:?} out of position"))
        })?;
        Ok(TreeNode::leaf(Identifier::new(text)?))
    }

    fn open(&mut self, kind: NodeKind) -> Result<()> {
        self.expect(OPEN)?;
        let word = self.next()?;
        if kind_of(word) == Some(kind) {
            Ok(())
        } else {
            self.pos -= 1;
            Err(self.err(&alloc::format!("expected {}, found {word:?}", keyword(kind))))
        }
    }

    /// Children of the form `( KIND ... )` until the closing parenthesis.
    fn repeated(&mut self, kind: NodeKind, item: fn(&mut Self) -> Result<TreeNode>) -> Result<Vec<TreeNode>> {
        let mut items = Vec::new();
        loop {
            match self.peek() {
                Some(CLOSE) => {
                    self.pos += 1;
                    return Ok(items);
                }
                Some(OPEN) => {
                    self.open(kind)?;
                    items.push(item(self)?);
                }
                Some(other) => return Err(self.err(&alloc::format!("unexpected {other:?}"))),
                None => return Err(self.err("unbalanced parentheses")),
            }
        }
    }

    fn pair(&mut self, kind: NodeKind) -> Result<TreeNode> {
        let first = self.leaf()?;
        let second = self.leaf()?;
        self.expect(CLOSE)?;
        Ok(TreeNode::inner(kind, alloc::vec![first, second]))
    }

    fn class(&mut self) -> Result<TreeNode> {
        self.open(NodeKind::Name)?;
        let name = self.leaf()?;
        self.expect(CLOSE)?;
        self.open(NodeKind::Attrs)?;
        let attrs = self.repeated(NodeKind::Attr, |p| p.pair(NodeKind::Attr))?;
        self.open(NodeKind::Assocs)?;
        let assocs = self.repeated(NodeKind::Assoc, |p| p.pair(NodeKind::Assoc))?;
        self.expect(CLOSE)?;
        Ok(TreeNode::inner(
            NodeKind::Cls,
            alloc::vec![
                TreeNode::inner(NodeKind::Name, alloc::vec![name]),
                TreeNode::inner(NodeKind::Attrs, attrs),
                TreeNode::inner(NodeKind::Assocs, assocs),
            ],
        ))
    }
}

pub fn parse_surface(s: &SurfaceText) -> Result<TreeNode> {
    let mut p = SurfaceParser {
        tokens: &s.tokens,
        pos: 0,
    };
    p.open(NodeKind::Model)?;
    let classes = p.repeated(NodeKind::Cls, SurfaceParser::class)?;
    if p.pos != s.tokens.len() {
        return Err(p.err("trailing tokens after model"));
    }
    Ok(TreeNode::inner(NodeKind::Model, classes))
}

/// Rebuilds a metamodel from a parsed tree. Containment is not part of the
/// surface form, so every association comes back as a plain reference.
pub fn tree_to_metamodel(t: &TreeNode, id: impl Into<String>) -> Result<Metamodel> {
    fn text(n: &TreeNode) -> Result<Identifier> {
        n.text.clone().ok_or_else(|| Error::Surface("expected a leaf".into()))
    }
    fn child(n: &TreeNode, i: usize) -> Result<&TreeNode> {
        n.children.get(i).ok_or_else(|| Error::Surface("malformed tree".into()))
    }
    if t.kind != NodeKind::Model {
        return Err(Error::Surface("root is not a model node".into()));
    }
    let mut classes = Vec::with_capacity(t.children.len());
    for cls in &t.children {
        let mut class = ClassDef::new(text(child(child(cls, 0)?, 0)?)?);
        for a in &child(cls, 1)?.children {
            class.attributes.push(AttributeDef {
                type_name: text(child(a, 0)?)?,
                name: text(child(a, 1)?)?,
            });
        }
        for a in &child(cls, 2)?.children {
            class.associations.push(AssociationDef {
                target_class: text(child(a, 0)?)?,
                name: text(child(a, 1)?)?,
                is_containment: false,
            });
        }
        classes.push(class);
    }
    Metamodel::new(id, classes)
}

/// Index of the token holding the name of `r` in `flatten(build_tree(m))`.
pub fn name_token_index(m: &Metamodel, r: ElementRef) -> Result<usize> {
    m.resolve(r)?;
    // "( MM" then per class: "( CLS ( NAME x ) ( ATTRS" 8, five per
    // attribute, ") ( ASSOCS" 3, five per association, ") )" 2.
    let start = 2 + m.classes[..r.class_index]
        .iter()
        .map(|c| 13 + 5 * c.attributes.len() + 5 * c.associations.len())
        .sum::<usize>();
    let class = &m.classes[r.class_index];
    Ok(match r.kind {
        ElementKind::Class => start + 4,
        ElementKind::Attribute => start + 8 + 5 * r.member_index + 3,
        ElementKind::Association => start + 11 + 5 * class.attributes.len() + 5 * r.member_index + 3,
    })
}

/// Flattens `m` and replaces the name of `r` with the mask token.
pub fn mask_element(m: &Metamodel, r: ElementRef) -> Result<(SurfaceText, Identifier)> {
    let truth = m.resolve(r)?.clone();
    let idx = name_token_index(m, r)?;
    let mut text = flatten(&build_tree(m));
    debug_assert_eq!(text.tokens[idx], escape(truth.as_str()));
    text.tokens[idx] = MASK.to_string();
    Ok((text, truth))
}
