//! Grammar-closed genetic operators. Both work on the syntax tree and
//! re-render, so their output always parses.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::plan::{Modifiers, NeuronKind, Property};
use super::syntax::{self, Entry, NeuronDecl, Stick, Tail, Tree};
use super::Genotype;
use crate::rng::{seeded, Rng};

/// Per-call probabilities of each mutation operator firing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MutationRates {
    pub point_change: f64,
    pub segment_insert: f64,
    pub segment_delete: f64,
    /// Per-weight probability of a Gaussian perturbation.
    pub weight_perturb: f64,
    pub weight_sigma: f64,
}

impl Default for MutationRates {
    fn default() -> Self {
        MutationRates {
            point_change: 0.5,
            segment_insert: 0.15,
            segment_delete: 0.15,
            weight_perturb: 0.2,
            weight_sigma: 0.3,
        }
    }
}

impl MutationRates {
    pub fn none() -> Self {
        MutationRates {
            point_change: 0.0,
            segment_insert: 0.0,
            segment_delete: 0.0,
            weight_perturb: 0.0,
            weight_sigma: 0.0,
        }
    }
}

fn tree_of(g: &Genotype) -> Tree {
    syntax::parse_tree(g.as_str()).expect("Genotype holds parseable text")
}

fn round_weight(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

/// Mutate a genotype. Output always parses; equal seeds give equal output,
/// and when no operator fires the input is returned unchanged.
pub fn mutate(g: &Genotype, rates: &MutationRates, rng_seed: u64) -> Genotype {
    let mut rng = seeded(rng_seed);
    let mut tree = tree_of(g);
    let mut changed = false;
    if rng.random_bool(rates.point_change.clamp(0.0, 1.0)) {
        point_change(&mut tree, &mut rng);
        changed = true;
    }
    if rng.random_bool(rates.segment_insert.clamp(0.0, 1.0)) {
        segment_insert(&mut tree, &mut rng);
        changed = true;
    }
    if rng.random_bool(rates.segment_delete.clamp(0.0, 1.0)) {
        changed |= segment_delete(&mut tree, &mut rng);
    }
    if rates.weight_perturb > 0.0 && rates.weight_sigma > 0.0 {
        changed |= perturb_weights(&mut tree, rates, &mut rng);
    }
    if !changed {
        return g.clone();
    }
    Genotype::from_trusted(syntax::render(&tree))
}

/// Subtree exchange at stick boundaries: a random stick of `a` (with
/// everything grown from it) is replaced by a random stick subtree of `b`.
pub fn crossover(a: &Genotype, b: &Genotype, rng_seed: u64) -> Genotype {
    let mut rng = seeded(rng_seed);
    let mut ta = tree_of(a);
    let tb = tree_of(b);
    let sites_a = ta.preorder();
    let sites_b = tb.preorder();
    let cut_a = sites_a[rng.random_range(0..sites_a.len())];
    let cut_b = sites_b[rng.random_range(0..sites_b.len())];
    let uid_offset = ta.max_uid().map_or(0, |u| u + 1);
    let copied = copy_subtree(&tb, cut_b, &mut ta, uid_offset);
    let loc = locate(&ta, cut_a);
    set_location(&mut ta, loc, Some(copied));
    Genotype::from_trusted(syntax::render(&ta))
}

fn copy_subtree(from: &Tree, index: usize, into: &mut Tree, uid_offset: usize) -> usize {
    let src = &from.sticks[index];
    let tail = match &src.tail {
        Tail::End => Tail::End,
        Tail::Chain(c) => Tail::Chain(copy_subtree(from, *c, into, uid_offset)),
        Tail::Group(slots) => Tail::Group(
            slots
                .iter()
                .map(|s| s.map(|c| copy_subtree(from, c, into, uid_offset)))
                .collect(),
        ),
    };
    let neurons = src
        .neurons
        .iter()
        .map(|n| NeuronDecl {
            uid: n.uid + uid_offset,
            kind: n.kind,
            entry: match &n.entry {
                Entry::Links(links) => Entry::Links(
                    links.iter().map(|&(u, w)| (u + uid_offset, w)).collect(),
                ),
                other => other.clone(),
            },
        })
        .collect();
    into.sticks.push(Stick {
        mods: src.mods,
        neurons,
        tail,
    });
    into.sticks.len() - 1
}

/// Where a stick hangs in the tree.
#[derive(Debug, Clone, Copy)]
enum Location {
    RootChain,
    RootSlot(usize),
    Chain(usize),
    Slot(usize, usize),
}

impl Location {
    fn is_chain(self) -> bool {
        matches!(self, Location::RootChain | Location::Chain(_))
    }
}

fn locate(tree: &Tree, target: usize) -> Location {
    let check = |tail: &Tail, chain: Location, slot: fn(usize) -> Location| match tail {
        Tail::Chain(c) if *c == target => Some(chain),
        Tail::Group(slots) => slots
            .iter()
            .position(|s| *s == Some(target))
            .map(slot),
        _ => None,
    };
    if let Some(loc) = check(&tree.root, Location::RootChain, Location::RootSlot) {
        return loc;
    }
    for owner in tree.preorder() {
        let tail = &tree.sticks[owner].tail;
        let found = match tail {
            Tail::Chain(c) if *c == target => Some(Location::Chain(owner)),
            Tail::Group(slots) => slots
                .iter()
                .position(|s| *s == Some(target))
                .map(|k| Location::Slot(owner, k)),
            _ => None,
        };
        if let Some(loc) = found {
            return loc;
        }
    }
    unreachable!("stick {target} is not reachable")
}

fn tail_mut(tree: &mut Tree, loc: Location) -> &mut Tail {
    match loc {
        Location::RootChain | Location::RootSlot(_) => &mut tree.root,
        Location::Chain(o) | Location::Slot(o, _) => &mut tree.sticks[o].tail,
    }
}

fn set_location(tree: &mut Tree, loc: Location, stick: Option<usize>) {
    let tail = tail_mut(tree, loc);
    match loc {
        Location::RootChain | Location::Chain(_) => {
            *tail = stick.map_or(Tail::End, Tail::Chain);
        }
        Location::RootSlot(k) | Location::Slot(_, k) => {
            if let Tail::Group(slots) = tail {
                slots[k] = stick;
            }
        }
    }
}

fn random_property(rng: &mut Rng) -> Property {
    Property::ALL[rng.random_range(0..Property::ALL.len())]
}

fn random_kind(rng: &mut Rng) -> NeuronKind {
    [NeuronKind::Touch, NeuronKind::Motor, NeuronKind::Hidden][rng.random_range(0..3)]
}

fn point_change(tree: &mut Tree, rng: &mut Rng) {
    let sticks = tree.preorder();
    let s = sticks[rng.random_range(0..sticks.len())];
    let roll = rng.random_range(0..100);
    let has_neurons = !tree.sticks[s].neurons.is_empty();
    if (70..82).contains(&roll) && has_neurons {
        let k = rng.random_range(0..tree.sticks[s].neurons.len());
        let old = tree.sticks[s].neurons[k].kind;
        let mut kind = random_kind(rng);
        while kind == old {
            kind = random_kind(rng);
        }
        tree.sticks[s].neurons[k].kind = kind;
    } else if (82..94).contains(&roll) {
        let existing: Vec<usize> = sticks
            .iter()
            .flat_map(|&i| tree.sticks[i].neurons.iter().map(|n| n.uid))
            .collect();
        let uid = tree.max_uid().map_or(0, |u| u + 1);
        let weight = round_weight(rng.random_range(-3.0..3.0));
        let entry = if !existing.is_empty() && rng.random_bool(0.5) {
            Entry::Links(vec![(existing[rng.random_range(0..existing.len())], weight)])
        } else {
            Entry::Bias(weight)
        };
        let kind = random_kind(rng);
        tree.sticks[s].neurons.push(NeuronDecl { uid, kind, entry });
    } else if roll >= 94 && has_neurons {
        let k = rng.random_range(0..tree.sticks[s].neurons.len());
        tree.sticks[s].neurons.remove(k);
    } else {
        let p = random_property(rng);
        let delta = if rng.random_bool(0.5) { 1 } else { -1 };
        tree.sticks[s].mods.adjust(p, delta);
    }
}

fn segment_insert(tree: &mut Tree, rng: &mut Rng) {
    let mut mods = Modifiers::default();
    for _ in 0..rng.random_range(0..=2) {
        mods.adjust(random_property(rng), if rng.random_bool(0.5) { 1 } else { -1 });
    }
    let new = tree.sticks.len();
    tree.sticks.push(Stick {
        mods,
        neurons: Vec::new(),
        tail: Tail::End,
    });
    let sites = tree.preorder();
    // site 0 is the root part, site k > 0 the end part of stick sites[k-1]
    let site = rng.random_range(0..=sites.len() - 1);
    let slot_pick: usize = rng.random_range(0..usize::MAX);
    let owner = if site == 0 {
        &mut tree.root
    } else {
        &mut tree.sticks[sites[site - 1]].tail
    };
    let displaced = match owner {
        Tail::End => {
            *owner = Tail::Chain(new);
            None
        }
        Tail::Chain(c) => {
            let c = *c;
            *owner = Tail::Chain(new);
            Some(c)
        }
        Tail::Group(slots) => {
            let k = slot_pick % slots.len();
            slots[k].replace(new)
        }
    };
    if let Some(c) = displaced {
        tree.sticks[new].tail = Tail::Chain(c);
    }
}

fn segment_delete(tree: &mut Tree, rng: &mut Rng) -> bool {
    let sticks = tree.preorder();
    if sticks.len() <= 1 {
        return false;
    }
    let victim = sticks[rng.random_range(0..sticks.len())];
    let before = tree.clone();
    let loc = locate(tree, victim);
    match tree.sticks[victim].tail.clone() {
        Tail::End => set_location(tree, loc, None),
        Tail::Chain(c) => set_location(tree, loc, Some(c)),
        Tail::Group(slots) if loc.is_chain() => *tail_mut(tree, loc) = Tail::Group(slots),
        Tail::Group(_) => set_location(tree, loc, None),
    }
    if tree.preorder().is_empty() {
        *tree = before;
        return false;
    }
    true
}

fn perturb_weights(tree: &mut Tree, rates: &MutationRates, rng: &mut Rng) -> bool {
    let normal = Normal::new(0.0, rates.weight_sigma).expect("finite sigma");
    let p = rates.weight_perturb.clamp(0.0, 1.0);
    let mut changed = false;
    for s in tree.preorder() {
        for n in &mut tree.sticks[s].neurons {
            match &mut n.entry {
                Entry::None => {}
                Entry::Bias(b) => {
                    if rng.random_bool(p) {
                        *b = round_weight(*b + normal.sample(rng));
                        changed = true;
                    }
                }
                Entry::Links(links) => {
                    for (_, w) in links.iter_mut() {
                        if rng.random_bool(p) {
                            *w = round_weight(*w + normal.sample(rng));
                            changed = true;
                        }
                    }
                }
            }
        }
    }
    changed
}
