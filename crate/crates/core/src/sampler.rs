//! Test-sample generation for the three modeling scenarios.
//!
//! * global: every named element is masked in turn, the rest of the
//!   metamodel is the context;
//! * local: the context shrinks to the owning class and the classes linked
//!   to it by an association, in either direction;
//! * incremental: the metamodel is rebuilt element by element from a root
//!   class and each new element is predicted from what exists so far.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::metamodel::{ElementKind, ElementRef, Identifier, Metamodel};
use crate::tree::{mask_element, SurfaceText};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Global,
    Local,
    Incremental,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Global => "global",
            Self::Local => "local",
            Self::Incremental => "incremental",
        }
    }
}

impl core::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(Self::Global),
            "local" => Ok(Self::Local),
            "incremental" => Ok(Self::Incremental),
            other => Err(Error::Config(alloc::format!("unknown strategy {other:?}"))),
        }
    }
}

/// A strategy plus its seed; only the incremental variant is seeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingStrategy {
    variant: Strategy,
    rng_seed: Option<u64>,
}

impl SamplingStrategy {
    pub fn global() -> Self {
        Self {
            variant: Strategy::Global,
            rng_seed: None,
        }
    }

    pub fn local() -> Self {
        Self {
            variant: Strategy::Local,
            rng_seed: None,
        }
    }

    pub fn incremental(seed: u64) -> Self {
        Self {
            variant: Strategy::Incremental,
            rng_seed: Some(seed),
        }
    }

    pub fn new(variant: Strategy, seed: u64) -> Self {
        match variant {
            Strategy::Global => Self::global(),
            Strategy::Local => Self::local(),
            Strategy::Incremental => Self::incremental(seed),
        }
    }

    pub fn variant(&self) -> Strategy {
        self.variant
    }

    pub fn seed(&self) -> Option<u64> {
        self.rng_seed
    }

    pub fn sample(&self, m: &Metamodel) -> Result<Vec<TestSample>> {
        match (self.variant, self.rng_seed) {
            (Strategy::Global, _) => sample_global(m),
            (Strategy::Local, _) => sample_local(m),
            (Strategy::Incremental, Some(seed)) => sample_incremental(m, seed),
            (Strategy::Incremental, None) => Err(Error::Config("incremental sampling needs a seed".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSample {
    pub context: SurfaceText,
    pub ground_truth: Identifier,
    pub kind: ElementKind,
    /// Named elements visible in the context, the masked one excluded.
    pub context_size: usize,
    pub metamodel_id: String,
    pub strategy: Strategy,
}

/// Which elements of a metamodel are present in a context.
#[derive(Debug, Clone)]
struct Visible {
    classes: Vec<bool>,
    attrs: Vec<Vec<bool>>,
    assocs: Vec<Vec<bool>>,
}

impl Visible {
    fn none(m: &Metamodel) -> Self {
        Self {
            classes: alloc::vec![false; m.classes.len()],
            attrs: m.classes.iter().map(|c| alloc::vec![false; c.attributes.len()]).collect(),
            assocs: m.classes.iter().map(|c| alloc::vec![false; c.associations.len()]).collect(),
        }
    }

    fn whole_classes(m: &Metamodel, keep: impl Fn(usize) -> bool) -> Self {
        let mut v = Self::none(m);
        for ci in 0..m.classes.len() {
            if keep(ci) {
                v.classes[ci] = true;
                v.attrs[ci].fill(true);
                v.assocs[ci].fill(true);
            }
        }
        v
    }

    fn show(&mut self, r: ElementRef) {
        match r.kind {
            ElementKind::Class => self.classes[r.class_index] = true,
            ElementKind::Attribute => self.attrs[r.class_index][r.member_index] = true,
            ElementKind::Association => self.assocs[r.class_index][r.member_index] = true,
        }
    }

    /// The partial metamodel and the position of `target` inside it.
    fn project(&self, m: &Metamodel, target: ElementRef) -> (Metamodel, ElementRef) {
        let mut classes = Vec::new();
        let mut mapped = target;
        for (ci, class) in m.classes.iter().enumerate() {
            if !self.classes[ci] {
                continue;
            }
            if ci == target.class_index {
                mapped.class_index = classes.len();
                mapped.member_index = match target.kind {
                    ElementKind::Class => 0,
                    ElementKind::Attribute => self.attrs[ci][..target.member_index].iter().filter(|&&b| b).count(),
                    ElementKind::Association => self.assocs[ci][..target.member_index].iter().filter(|&&b| b).count(),
                };
            }
            let mut c = class.clone();
            c.attributes = class
                .attributes
                .iter()
                .zip(&self.attrs[ci])
                .filter(|(_, &on)| on)
                .map(|(a, _)| a.clone())
                .collect();
            c.associations = class
                .associations
                .iter()
                .zip(&self.assocs[ci])
                .filter(|(_, &on)| on)
                .map(|(a, _)| a.clone())
                .collect();
            classes.push(c);
        }
        (
            Metamodel {
                id: m.id.clone(),
                classes,
            },
            mapped,
        )
    }
}

fn sample_from(m: &Metamodel, visible: &Visible, target: ElementRef, strategy: Strategy) -> Result<TestSample> {
    let (partial, mapped) = visible.project(m, target);
    let (context, ground_truth) = mask_element(&partial, mapped)?;
    Ok(TestSample {
        context,
        ground_truth,
        kind: target.kind,
        context_size: partial.element_count() - 1,
        metamodel_id: m.id.clone(),
        strategy,
    })
}

/// Whole metamodel as context, `r` masked.
pub fn global_sample(m: &Metamodel, r: ElementRef) -> Result<TestSample> {
    m.resolve(r)?;
    sample_from(m, &Visible::whole_classes(m, |_| true), r, Strategy::Global)
}

/// Owning class plus directly linked classes as context, `r` masked.
pub fn local_sample(m: &Metamodel, r: ElementRef) -> Result<TestSample> {
    m.resolve(r)?;
    let links = m.class_links();
    let home = r.class_index;
    let visible = Visible::whole_classes(m, |ci| ci == home || links[home].contains(&ci));
    sample_from(m, &visible, r, Strategy::Local)
}

/// One sample per named element, full metamodel as context.
pub fn sample_global(m: &Metamodel) -> Result<Vec<TestSample>> {
    m.element_refs().into_iter().map(|r| global_sample(m, r)).collect()
}

/// One sample per named element, local neighborhood as context.
pub fn sample_local(m: &Metamodel) -> Result<Vec<TestSample>> {
    m.element_refs().into_iter().map(|r| local_sample(m, r)).collect()
}

/// Index of the first class with the fewest incoming associations among
/// the candidates.
fn fewest_incoming(incoming: &[usize], candidates: impl Iterator<Item = usize>) -> Option<usize> {
    candidates.min_by_key(|&ci| (incoming[ci], ci))
}

struct Construction<'a> {
    m: &'a Metamodel,
    visible: Visible,
    placed: Vec<bool>,
    samples: Vec<TestSample>,
}

impl Construction<'_> {
    fn emit(&mut self, r: ElementRef) -> Result<()> {
        self.visible.show(r);
        let sample = sample_from(self.m, &self.visible, r, Strategy::Incremental)?;
        self.samples.push(sample);
        Ok(())
    }

    /// Associations between `class` and already placed classes (itself
    /// included) that are not yet visible; those touching `partner` first.
    fn pending_associations(&self, class: usize, partner: Option<usize>) -> Vec<ElementRef> {
        let mut first = Vec::new();
        let mut rest = Vec::new();
        for (src, c) in self.m.classes.iter().enumerate() {
            for (j, a) in c.associations.iter().enumerate() {
                if self.visible.assocs[src][j] {
                    continue;
                }
                let Some(dst) = self.m.class_index(a.target_class.as_str()) else { continue };
                if !(self.placed[src] && self.placed[dst]) || (src != class && dst != class) {
                    continue;
                }
                let other = if src == class { dst } else { src };
                if Some(other) == partner {
                    first.push(ElementRef::association(src, j));
                } else {
                    rest.push(ElementRef::association(src, j));
                }
            }
        }
        first.extend(rest);
        first
    }

    /// Adds a class (predicted unless it is the root), its attributes and
    /// every association it now completes.
    fn place(&mut self, class: usize, partner: Option<usize>, predict_name: bool) -> Result<()> {
        self.placed[class] = true;
        if predict_name {
            self.emit(ElementRef::class(class))?;
        } else {
            self.visible.show(ElementRef::class(class));
        }
        for ai in 0..self.m.classes[class].attributes.len() {
            self.emit(ElementRef::attribute(class, ai))?;
        }
        for r in self.pending_associations(class, partner) {
            self.emit(r)?;
        }
        Ok(())
    }
}

/// Simulated element-by-element construction.
///
/// The root is the first class without incoming associations (or with the
/// fewest); its name is never predicted. From the current class a random
/// unplaced linked class is chosen and placed: its name, then each of its
/// attributes, then the associations linking it to the current class and
/// to other placed classes. The chosen class becomes current. At a dead end
/// the walk moves to a linked placed class that still has unplaced
/// neighbors, or else places the unplaced class with the fewest incoming
/// associations.
pub fn sample_incremental(m: &Metamodel, seed: u64) -> Result<Vec<TestSample>> {
    let n = m.classes.len();
    let mut build = Construction {
        m,
        visible: Visible::none(m),
        placed: alloc::vec![false; n],
        samples: Vec::new(),
    };
    let Some(root) = fewest_incoming(&m.incoming_counts(), 0..n) else {
        return Ok(Vec::new());
    };
    let incoming = m.incoming_counts();
    let links = m.class_links();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    build.place(root, None, false)?;
    let mut current = root;
    let mut remaining = n - 1;
    while remaining > 0 {
        let open: Vec<usize> = links[current].iter().copied().filter(|&c| !build.placed[c]).collect();
        if !open.is_empty() {
            let chosen = open[rng.random_range(0..open.len())];
            build.place(chosen, Some(current), true)?;
            remaining -= 1;
            current = chosen;
            continue;
        }
        let has_open = |c: usize, placed: &[bool]| links[c].iter().any(|&x| !placed[x]);
        if let Some(&next) = links[current].iter().find(|&&c| has_open(c, &build.placed)) {
            current = next;
            continue;
        }
        let unplaced: BTreeSet<usize> = (0..n).filter(|&c| !build.placed[c]).collect();
        let fallback = fewest_incoming(&incoming, unplaced.into_iter()).expect("remaining > 0");
        build.place(fallback, None, true)?;
        remaining -= 1;
        current = fallback;
    }
    Ok(build.samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metamodel::fixtures::*;
    use crate::tree::{parse_surface, MASK};
    use alloc::vec;

    #[test]
    fn global_counts_and_contexts() {
        let m = fsm();
        let samples = sample_global(&m).unwrap();
        assert_eq!(samples.len(), m.element_count());
        let fsm_sample = &samples[0];
        assert_eq!(fsm_sample.ground_truth.as_str(), "FSM");
        assert_eq!(fsm_sample.context.mask_count(), 1);
        assert_eq!(fsm_sample.context_size, m.element_count() - 1);
        for s in &samples {
            assert_eq!(s.context.mask_count(), 1);
        }
    }

    #[test]
    fn count_identity_three_two_four() {
        let m = Metamodel::new(
            "m",
            vec![
                class("A", vec![attr("x", "EInt")], vec![assoc("b", "B"), assoc("c", "C")]),
                class("B", vec![attr("y", "EInt")], vec![assoc("c", "C")]),
                class("C", vec![], vec![assoc("a", "A")]),
            ],
        )
        .unwrap();
        assert_eq!(sample_global(&m).unwrap().len(), 9);
        assert_eq!(sample_local(&m).unwrap().len(), 9);
        assert_eq!(sample_incremental(&m, 3).unwrap().len(), 8);
    }

    #[test]
    fn local_context_of_isolated_class() {
        let m = Metamodel::new(
            "m",
            vec![class("A", vec![attr("x", "EInt")], vec![assoc("b", "B")]), class("B", vec![], vec![]), class("Lone", vec![attr("z", "EInt")], vec![])],
        )
        .unwrap();
        let s = local_sample(&m, ElementRef::class(2)).unwrap();
        let tree = parse_surface(&SurfaceText {
            tokens: s.context.tokens.iter().map(|t| if t == MASK { "X".into() } else { t.clone() }).collect(),
        })
        .unwrap();
        assert_eq!(tree.children.len(), 1);
        assert_eq!(s.context_size, 1);
    }

    #[test]
    fn local_fsm_keeps_linked_classes() {
        let m = Metamodel::new(
            "m",
            vec![
                class("FSM", vec![], vec![assoc("states", "State")]),
                class("State", vec![], vec![]),
                class("Other", vec![], vec![]),
            ],
        )
        .unwrap();
        let s = local_sample(&m, ElementRef::class(0)).unwrap();
        assert!(s.context.tokens.contains(&"State".into()));
        assert!(!s.context.tokens.contains(&"Other".into()));
    }

    #[test]
    fn incremental_minimal() {
        let m = Metamodel::new("m", vec![class("A", vec![], vec![assoc("toB", "B")]), class("B", vec![], vec![])]).unwrap();
        let samples = sample_incremental(&m, 0).unwrap();
        let truths: Vec<(&str, ElementKind)> = samples.iter().map(|s| (s.ground_truth.as_str(), s.kind)).collect();
        assert_eq!(truths, vec![("B", ElementKind::Class), ("toB", ElementKind::Association)]);
        assert_eq!(samples[0].context_size, 1);
        assert_eq!(samples[1].context_size, 2);
        // The association to B is withheld while B's name is predicted.
        assert!(!samples[0].context.tokens.contains(&"toB".into()));
    }

    #[test]
    fn incremental_root_has_fewest_incoming() {
        let m = fsm();
        let samples = sample_incremental(&m, 11).unwrap();
        assert_eq!(samples.len(), m.element_count() - 1);
        assert!(samples.iter().all(|s| s.ground_truth.as_str() != "FSM"));
        assert_eq!(samples[0].ground_truth.as_str(), "name");
        assert!(samples.windows(2).all(|w| w[0].context_size <= w[1].context_size));
        assert_eq!(sample_incremental(&m, 11).unwrap(), samples);
    }

    #[test]
    fn incremental_handles_disconnected_and_cycles() {
        let m = Metamodel::new(
            "m",
            vec![
                class("A", vec![], vec![assoc("b", "B"), assoc("me", "A")]),
                class("B", vec![], vec![assoc("a", "A")]),
                class("C", vec![attr("x", "EInt")], vec![]),
                class("D", vec![], vec![assoc("c", "C")]),
            ],
        )
        .unwrap();
        for seed in 0..20 {
            let samples = sample_incremental(&m, seed).unwrap();
            assert_eq!(samples.len(), m.element_count() - 1);
            let mut seen: Vec<(ElementKind, &str)> = samples.iter().map(|s| (s.kind, s.ground_truth.as_str())).collect();
            seen.sort();
            seen.dedup();
            assert_eq!(seen.len(), samples.len());
            assert!(samples.iter().all(|s| s.context.mask_count() == 1));
        }
    }

    #[test]
    fn strategy_requires_seed_only_for_incremental() {
        let s = SamplingStrategy::incremental(4);
        assert_eq!(s.seed(), Some(4));
        assert_eq!(SamplingStrategy::global().seed(), None);
        assert_eq!("local".parse::<Strategy>().unwrap(), Strategy::Local);
        assert!("nope".parse::<Strategy>().is_err());
    }
}
