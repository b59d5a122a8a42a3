//! Compiled body plans and their conversion to and from syntax trees.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::syntax::{Entry, NeuronDecl, Stick, Tail, Tree};

pub const MODIFIER_STEP: f64 = 1.1;
pub const MODIFIER_MIN: f64 = 0.2;
pub const MODIFIER_MAX: f64 = 5.0;
const BASE_STICK_LENGTH: f64 = 1.0;
const BASE_STIFFNESS: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Property {
    Rotation,
    Length,
    Muscle,
    Size,
    Stiffness,
    Friction,
}

impl Property {
    pub const ALL: [Property; 6] = [
        Property::Rotation,
        Property::Length,
        Property::Muscle,
        Property::Size,
        Property::Stiffness,
        Property::Friction,
    ];

    fn letter(self) -> char {
        match self {
            Property::Rotation => 'r',
            Property::Length => 'l',
            Property::Muscle => 'm',
            Property::Size => 's',
            Property::Stiffness => 'i',
            Property::Friction => 'e',
        }
    }
}

/// Net modifier letter counts for one stick (uppercase minus lowercase).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Modifiers([i32; 6]);

impl Modifiers {
    pub fn count(&self, p: Property) -> i32 {
        self.0[p as usize]
    }

    pub fn adjust(&mut self, p: Property, delta: i32) {
        self.0[p as usize] += delta;
    }

    /// Multiplicative factor for a property, clamped to `[0.2, 5]`.
    pub fn factor(&self, p: Property) -> f64 {
        MODIFIER_STEP
            .powi(self.count(p))
            .clamp(MODIFIER_MIN, MODIFIER_MAX)
    }

    pub(crate) fn apply_letter(&mut self, c: char) -> bool {
        let lower = c.to_ascii_lowercase();
        match Property::ALL.iter().find(|p| p.letter() == lower) {
            Some(&p) => {
                self.adjust(p, if c.is_ascii_uppercase() { 1 } else { -1 });
                true
            }
            None => false,
        }
    }

    pub(crate) fn render(&self, out: &mut String) {
        for p in Property::ALL {
            let n = self.count(p);
            let c = if n > 0 {
                p.letter().to_ascii_uppercase()
            } else {
                p.letter()
            };
            for _ in 0..n.unsigned_abs() {
                out.push(c);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NeuronKind {
    Touch,
    Motor,
    Hidden,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Part {
    pub id: usize,
    pub position: [f64; 3],
    pub size_modifier: f64,
    pub friction_modifier: f64,
}

/// Which slot of a branch group a stick occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchSlot {
    pub index: usize,
    pub arity: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub id: usize,
    pub part_a: usize,
    pub part_b: usize,
    pub stiffness: f64,
    pub rest_angle: f64,
    pub muscle: f64,
    pub length: f64,
    pub modifiers: Modifiers,
    /// `None` when the stick continues a chain rather than filling a branch.
    pub slot: Option<BranchSlot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronSpec {
    pub id: usize,
    pub kind: NeuronKind,
    pub attachment: usize,
    /// `[bias]` for neurons written with a `:w` entry, otherwise empty.
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Connection {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyPlan {
    pub parts: Vec<Part>,
    pub joints: Vec<Joint>,
    pub neurons: Vec<NeuronSpec>,
    pub connections: Vec<Connection>,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid body plan: {0}")]
pub struct PlanError(pub String);

fn invalid<T>(msg: impl Into<String>) -> Result<T, PlanError> {
    Err(PlanError(msg.into()))
}

fn slot_offset(index: usize, arity: usize) -> f64 {
    use std::f64::consts::PI;
    PI * (index as f64 + 1.0) / (arity as f64 + 1.0) - PI / 2.0
}

impl BodyPlan {
    pub fn count_kind(&self, kind: NeuronKind) -> usize {
        self.neurons.iter().filter(|n| n.kind == kind).count()
    }

    /// Check every structural invariant: a preorder-numbered tree of sticks
    /// with consistent branch slots, neurons in textual order on non-root
    /// parts, and connections between existing neurons.
    pub fn validate(&self) -> Result<(), PlanError> {
        if self.joints.is_empty() {
            return invalid("a body needs at least one stick");
        }
        if self.parts.len() != self.joints.len() + 1 {
            return invalid("part count must equal joint count + 1");
        }
        for (i, p) in self.parts.iter().enumerate() {
            if p.id != i {
                return invalid(format!("part {i} has id {}", p.id));
            }
        }
        for (i, j) in self.joints.iter().enumerate() {
            if j.id != i || j.part_b != i + 1 || j.part_a >= j.part_b {
                return invalid(format!("joint {i} does not follow preorder numbering"));
            }
            if !(0.0..=1.0).contains(&j.stiffness) {
                return invalid(format!("joint {i} stiffness out of [0,1]"));
            }
        }
        self.children().map(|children| {
            // preorder check: walking the tree must visit parts 0, 1, 2, ...
            let mut next = 1;
            let mut stack: Vec<usize> = children[0].iter().rev().copied().collect();
            let mut ok = true;
            while let Some(part) = stack.pop() {
                ok &= part == next;
                next += 1;
                stack.extend(children[part].iter().rev());
            }
            ok && next == self.parts.len()
        })?
        .then_some(())
        .ok_or_else(|| PlanError("parts are not numbered in preorder".into()))?;

        let mut last_attachment = 1;
        for (i, n) in self.neurons.iter().enumerate() {
            if n.id != i {
                return invalid(format!("neuron {i} has id {}", n.id));
            }
            if n.attachment == 0 || n.attachment >= self.parts.len() {
                return invalid(format!("neuron {i} must attach to an existing non-root part"));
            }
            if n.attachment < last_attachment {
                return invalid("neurons must appear in textual order");
            }
            last_attachment = n.attachment;
            if n.params.len() > 1 {
                return invalid(format!("neuron {i} has more than one parameter"));
            }
        }
        for c in &self.connections {
            if c.from >= self.neurons.len() || c.to >= self.neurons.len() {
                return invalid("connection references a nonexistent neuron");
            }
            if !self.neurons[c.to].params.is_empty() {
                return invalid("a neuron cannot carry both a bias and inputs");
            }
            if !c.weight.is_finite() {
                return invalid("connection weight must be finite");
            }
        }
        Ok(())
    }

    /// Children of every part, ordered by branch slot.
    fn children(&self) -> Result<Vec<Vec<usize>>, PlanError> {
        let mut children = vec![Vec::new(); self.parts.len()];
        for j in &self.joints {
            children[j.part_a].push(j.part_b);
        }
        for (part, kids) in children.iter_mut().enumerate() {
            let slots: Vec<Option<BranchSlot>> =
                kids.iter().map(|&k| self.joints[k - 1].slot).collect();
            match slots.as_slice() {
                [] | [None] => {}
                _ if slots.iter().all(Option::is_some) => {
                    let arity = slots[0].unwrap().arity;
                    let mut seen = vec![false; arity];
                    for s in slots.iter().flatten() {
                        if s.arity != arity || s.index >= arity || seen[s.index] {
                            return invalid(format!("inconsistent branch slots on part {part}"));
                        }
                        seen[s.index] = true;
                    }
                    kids.sort_by_key(|&k| self.joints[k - 1].slot.unwrap().index);
                }
                _ => return invalid(format!("part {part} mixes chain and branch children")),
            }
        }
        Ok(children)
    }

    /// Structural isomorphism: equal canonical text.
    pub fn is_isomorphic(&self, other: &BodyPlan) -> bool {
        match (decompile(self), decompile(other)) {
            (Ok(a), Ok(b)) => {
                super::syntax::render(&a) == super::syntax::render(&b)
                    && self.parts.len() == other.parts.len()
            }
            _ => false,
        }
    }
}

/// Build a body plan from a syntax tree. Neuron inputs naming uids that do
/// not exist in the tree are dropped.
pub(crate) fn compile(tree: &Tree) -> BodyPlan {
    let mut builder = Builder {
        plan: BodyPlan {
            parts: vec![Part {
                id: 0,
                position: [0.0; 3],
                size_modifier: 1.0,
                friction_modifier: 1.0,
            }],
            joints: Vec::new(),
            neurons: Vec::new(),
            connections: Vec::new(),
        },
        uid_to_id: HashMap::new(),
        pending: Vec::new(),
    };
    builder.grow(tree, &tree.root, 0, 0.0);
    let Builder {
        mut plan,
        uid_to_id,
        pending,
    } = builder;
    plan.connections = pending
        .into_iter()
        .filter_map(|(to, uid, weight)| {
            uid_to_id
                .get(&uid)
                .map(|&from| Connection { from, to, weight })
        })
        .collect();
    plan
}

struct Builder {
    plan: BodyPlan,
    uid_to_id: HashMap<usize, usize>,
    pending: Vec<(usize, usize, f64)>,
}

impl Builder {
    fn grow(&mut self, tree: &Tree, tail: &Tail, parent: usize, heading: f64) {
        match tail {
            Tail::End => {}
            Tail::Chain(i) => self.stick(tree, *i, parent, heading, None),
            Tail::Group(slots) => {
                let arity = slots.len();
                for (index, slot) in slots.iter().enumerate() {
                    if let Some(i) = slot {
                        let slot = BranchSlot { index, arity };
                        self.stick(tree, *i, parent, heading + slot_offset(index, arity), Some(slot));
                    }
                }
            }
        }
    }

    fn stick(&mut self, tree: &Tree, i: usize, parent: usize, heading: f64, slot: Option<BranchSlot>) {
        let stick = &tree.sticks[i];
        let mods = stick.mods;
        let rest_angle = mods.factor(Property::Rotation).ln();
        let length = BASE_STICK_LENGTH * mods.factor(Property::Length);
        let direction = heading + rest_angle;
        let origin = self.plan.parts[parent].position;
        let id = self.plan.parts.len();
        self.plan.parts.push(Part {
            id,
            position: [
                origin[0] + length * direction.cos(),
                origin[1] + length * direction.sin(),
                origin[2],
            ],
            size_modifier: mods.factor(Property::Size),
            friction_modifier: mods.factor(Property::Friction),
        });
        self.plan.joints.push(Joint {
            id: id - 1,
            part_a: parent,
            part_b: id,
            stiffness: (BASE_STIFFNESS * mods.factor(Property::Stiffness)).min(1.0),
            rest_angle,
            muscle: mods.factor(Property::Muscle),
            length,
            modifiers: mods,
            slot,
        });
        for n in &stick.neurons {
            let nid = self.plan.neurons.len();
            self.uid_to_id.insert(n.uid, nid);
            let params = match n.entry {
                Entry::Bias(b) => vec![b],
                _ => Vec::new(),
            };
            if let Entry::Links(links) = &n.entry {
                self.pending
                    .extend(links.iter().map(|&(uid, w)| (nid, uid, w)));
            }
            self.plan.neurons.push(NeuronSpec {
                id: nid,
                kind: n.kind,
                attachment: id,
                params,
            });
        }
        self.grow(tree, &stick.tail, id, direction);
    }
}

/// Rebuild the syntax tree of a valid body plan. Stick `k` of the tree is
/// joint `k` and neuron uids equal neuron ids.
pub(crate) fn decompile(plan: &BodyPlan) -> Result<Tree, PlanError> {
    plan.validate()?;
    let children = plan.children()?;
    let tail_of = |part: usize| -> Tail {
        let kids = &children[part];
        match kids.first().map(|&k| plan.joints[k - 1].slot) {
            None => Tail::End,
            Some(None) => Tail::Chain(kids[0] - 1),
            Some(Some(s)) => {
                let mut slots = vec![None; s.arity];
                for &k in kids {
                    slots[plan.joints[k - 1].slot.unwrap().index] = Some(k - 1);
                }
                Tail::Group(slots)
            }
        }
    };
    let mut links: HashMap<usize, Vec<(usize, f64)>> = HashMap::new();
    for c in &plan.connections {
        links.entry(c.to).or_default().push((c.from, c.weight));
    }
    let mut sticks: Vec<Stick> = plan
        .joints
        .iter()
        .map(|j| Stick {
            mods: j.modifiers,
            neurons: Vec::new(),
            tail: tail_of(j.part_b),
        })
        .collect();
    for n in &plan.neurons {
        let entry = match (n.params.first(), links.remove(&n.id)) {
            (Some(&b), _) => Entry::Bias(b),
            (None, Some(l)) => Entry::Links(l),
            (None, None) => Entry::None,
        };
        sticks[n.attachment - 1].neurons.push(NeuronDecl {
            uid: n.id,
            kind: n.kind,
            entry,
        });
    }
    Ok(Tree {
        root: tail_of(0),
        sticks,
    })
}
