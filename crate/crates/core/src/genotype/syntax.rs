//! Arena-based syntax tree for genotype text, with the parser and renderer.

use super::plan::{Modifiers, NeuronKind};
use super::GenotypeError;

/// What follows a part: nothing, a single stick, or a branch group.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tail {
    End,
    Chain(usize),
    Group(Vec<Option<usize>>),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Entry {
    None,
    Bias(f64),
    /// Inputs by neuron uid.
    Links(Vec<(usize, f64)>),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct NeuronDecl {
    pub uid: usize,
    pub kind: NeuronKind,
    pub entry: Entry,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Stick {
    pub mods: Modifiers,
    pub neurons: Vec<NeuronDecl>,
    pub tail: Tail,
}

/// Sticks live in `sticks`; `root` is what grows from the implicit root part.
/// Unreachable arena slots are ignored by every traversal.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Tree {
    pub root: Tail,
    pub sticks: Vec<Stick>,
}

impl Tree {
    /// Reachable stick indices in textual (depth-first) order.
    pub fn preorder(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = Vec::new();
        push_tail(&self.root, &mut stack);
        while let Some(i) = stack.pop() {
            out.push(i);
            push_tail(&self.sticks[i].tail, &mut stack);
        }
        out
    }

    pub fn max_uid(&self) -> Option<usize> {
        self.preorder()
            .into_iter()
            .flat_map(|i| self.sticks[i].neurons.iter().map(|n| n.uid))
            .max()
    }
}

fn push_tail(tail: &Tail, stack: &mut Vec<usize>) {
    match tail {
        Tail::End => {}
        Tail::Chain(c) => stack.push(*c),
        Tail::Group(slots) => stack.extend(slots.iter().rev().flatten().copied()),
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    sticks: Vec<Stick>,
    neuron_count: usize,
    // (neuron textual index, entry position, offset) checked once all neurons are known
    pending: Vec<(usize, usize, i64)>,
}

fn syntax(position: usize, expected: &str) -> GenotypeError {
    GenotypeError::Syntax {
        position,
        expected: expected.to_string(),
    }
}

const LEGAL: &[u8] = b"X(),[]T|:-.0123456789rRlLmMsSiIeE";

pub(crate) fn parse_tree(text: &str) -> Result<Tree, GenotypeError> {
    for (i, c) in text.chars().enumerate() {
        if !c.is_ascii() || !LEGAL.contains(&(c as u8)) {
            return Err(syntax(i, "a genotype character"));
        }
    }
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
        sticks: Vec::new(),
        neuron_count: 0,
        pending: Vec::new(),
    };
    let root = p.tail()?;
    if p.pos != p.src.len() {
        return Err(syntax(p.pos, "'X', '(' or end of genotype"));
    }
    if p.sticks.is_empty() {
        return Err(syntax(p.pos, "at least one stick 'X'"));
    }
    for &(index, position, offset) in &p.pending {
        let source = index as i64 + offset;
        if source < 0 || source >= p.neuron_count as i64 {
            return Err(GenotypeError::Semantic {
                position,
                message: format!(
                    "offset {offset} from neuron {index} refers to a nonexistent neuron"
                ),
            });
        }
    }
    Ok(Tree {
        root,
        sticks: p.sticks,
    })
}

impl Parser<'_> {
    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8, what: &str) -> Result<(), GenotypeError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(syntax(self.pos, what))
        }
    }

    fn modifiers(&mut self) -> Modifiers {
        let mut mods = Modifiers::default();
        while let Some(c) = self.peek() {
            if !mods.apply_letter(c as char) {
                break;
            }
            self.pos += 1;
        }
        mods
    }

    fn tail(&mut self) -> Result<Tail, GenotypeError> {
        let start = self.pos;
        let mods = self.modifiers();
        let bare = self.pos == start;
        match self.peek() {
            Some(b'X') => Ok(Tail::Chain(self.stick(mods)?)),
            Some(b'(') if bare => Ok(Tail::Group(self.group()?)),
            _ if !bare => Err(syntax(self.pos, "'X' after modifiers")),
            _ => Ok(Tail::End),
        }
    }

    fn stick(&mut self, mods: Modifiers) -> Result<usize, GenotypeError> {
        self.pos += 1; // 'X'
        let mut neurons = Vec::new();
        while self.peek() == Some(b'[') {
            neurons.push(self.neuron()?);
        }
        let index = self.sticks.len();
        self.sticks.push(Stick {
            mods,
            neurons,
            tail: Tail::End,
        });
        let tail = self.tail()?;
        self.sticks[index].tail = tail;
        Ok(index)
    }

    fn group(&mut self) -> Result<Vec<Option<usize>>, GenotypeError> {
        self.pos += 1; // '('
        let mut slots = Vec::new();
        loop {
            let start = self.pos;
            let mods = self.modifiers();
            let bare = self.pos == start;
            match self.peek() {
                Some(b'X') => slots.push(Some(self.stick(mods)?)),
                Some(b',') | Some(b')') if bare => slots.push(None),
                _ if !bare => {
                    return Err(syntax(self.pos, "'X' after modifiers"))
                }
                _ => return Err(syntax(self.pos, "'X', ',' or ')'")),
            }
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b')') => {
                    self.pos += 1;
                    return Ok(slots);
                }
                _ => return Err(syntax(self.pos, "',' or ')'")),
            }
        }
    }

    fn neuron(&mut self) -> Result<NeuronDecl, GenotypeError> {
        self.pos += 1; // '['
        let index = self.neuron_count;
        self.neuron_count += 1;
        let kind = match self.peek() {
            Some(b'T') => {
                self.pos += 1;
                NeuronKind::Touch
            }
            Some(b'|') => {
                self.pos += 1;
                NeuronKind::Motor
            }
            _ => NeuronKind::Hidden,
        };
        let entry = match self.peek() {
            Some(b']') => Entry::None,
            Some(b':') => {
                self.pos += 1;
                Entry::Bias(self.number()?)
            }
            _ => {
                let mut links = Vec::new();
                loop {
                    let at = self.pos;
                    let offset = self.integer()?;
                    self.expect(b':', "':' after connection offset")?;
                    let weight = self.number()?;
                    self.pending.push((index, at, offset));
                    // resolved to an absolute textual index; validated after parsing
                    links.push(((index as i64 + offset).max(0) as usize, weight));
                    if self.peek() == Some(b',') {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
                Entry::Links(links)
            }
        };
        self.expect(b']', "']'")?;
        Ok(NeuronDecl {
            uid: index,
            kind,
            entry,
        })
    }

    fn digits(&mut self) -> usize {
        let start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        self.pos - start
    }

    fn integer(&mut self) -> Result<i64, GenotypeError> {
        let start = self.pos;
        if self.peek() == Some(b'-') {
            self.pos += 1;
        }
        if self.digits() == 0 {
            return Err(syntax(self.pos, "a digit"));
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse()
            .map_err(|_| syntax(start, "an integer offset of reasonable size"))
    }

    fn number(&mut self) -> Result<f64, GenotypeError> {
        let start = self.pos;
        if self.peek() == Some(b'-') {
            self.pos += 1;
        }
        if self.digits() == 0 {
            return Err(syntax(self.pos, "a digit"));
        }
        if self.peek() == Some(b'.') {
            self.pos += 1;
            if self.digits() == 0 {
                return Err(syntax(self.pos, "a digit after '.'"));
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let value: f64 = text.parse().expect("validated numeric literal");
        if value.is_finite() {
            Ok(value)
        } else {
            Err(syntax(start, "a finite number"))
        }
    }
}

/// Render a tree as canonical genotype text. Neuron inputs are written as
/// offsets between textual positions; links to missing uids are skipped.
pub(crate) fn render(tree: &Tree) -> String {
    let order = tree.preorder();
    let mut position = std::collections::HashMap::new();
    for n in order.iter().flat_map(|&i| &tree.sticks[i].neurons) {
        let next = position.len();
        position.insert(n.uid, next);
    }
    let mut out = String::new();
    render_tail(tree, &tree.root, &position, &mut out);
    out
}

fn render_tail(
    tree: &Tree,
    tail: &Tail,
    position: &std::collections::HashMap<usize, usize>,
    out: &mut String,
) {
    match tail {
        Tail::End => {}
        Tail::Chain(i) => render_stick(tree, *i, position, out),
        Tail::Group(slots) => {
            out.push('(');
            for (k, slot) in slots.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                if let Some(i) = slot {
                    render_stick(tree, *i, position, out);
                }
            }
            out.push(')');
        }
    }
}

fn render_stick(
    tree: &Tree,
    index: usize,
    position: &std::collections::HashMap<usize, usize>,
    out: &mut String,
) {
    let stick = &tree.sticks[index];
    stick.mods.render(out);
    out.push('X');
    for n in &stick.neurons {
        out.push('[');
        match n.kind {
            NeuronKind::Touch => out.push('T'),
            NeuronKind::Motor => out.push('|'),
            NeuronKind::Hidden => {}
        }
        match &n.entry {
            Entry::None => {}
            Entry::Bias(b) => {
                out.push(':');
                out.push_str(&format_number(*b));
            }
            Entry::Links(links) => {
                let me = position[&n.uid] as i64;
                let written: Vec<String> = links
                    .iter()
                    .filter_map(|(uid, w)| {
                        position
                            .get(uid)
                            .map(|&p| format!("{}:{}", p as i64 - me, format_number(*w)))
                    })
                    .collect();
                out.push_str(&written.join(","));
            }
        }
        out.push(']');
    }
    render_tail(tree, &stick.tail, position, out);
}

/// Rust's `Display` for `f64` is shortest-round-trip and never uses an
/// exponent, which matches the grammar's numeric literal.
fn format_number(x: f64) -> String {
    format!("{x}")
}
