//! Stick genotypes: a small f1-style grammar describing a branching body of
//! sticks with attached neurons.
//!
//! Grammar summary:
//!
//! * `X` grows a stick from the current part and moves to its end part.
//! * `(a,b,...)` branches from the current part; branches fan out at equal
//!   angles. A branch group ends its sequence, and empty branches are legal.
//! * Modifier letters before `X` scale the next stick only, by 1.1 per
//!   uppercase letter and 1/1.1 per lowercase letter, clamped to `[0.2, 5]`:
//!   `r/R` rotation, `l/L` length, `m/M` muscle, `s/S` size, `i/I`
//!   stiffness, `e/E` friction.
//! * `[...]` after a stick attaches a neuron to the stick's end part. `T` is
//!   a touch sensor, `|` a motor, no letter a hidden neuron. The type is
//!   followed by either `offset:weight` inputs (offsets count neurons in
//!   textual order) or a single `:bias`.
//!
//! Divergence from Framsticks: tokens such as `EE`, `LI` and `,,` are read
//! under the rules above, which need not match Framsticks' own semantics.

mod ops;
mod plan;
mod syntax;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ops::{crossover, mutate, MutationRates};
pub use plan::{
    BodyPlan, BranchSlot, Connection, Joint, Modifiers, NeuronKind, NeuronSpec, Part, PlanError,
    Property,
};

/// The example body from the Khepera model used throughout the tests.
pub const KHEPERA_GENOTYPE: &str =
    "(rrX(IX(ISSSEEX[T:1]),lmXMMMMEEEX[|1:2,-1:-3]rrSEEX[T:-0.407](SSISSLIEEX,,SSISSLIEEX),))";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenotypeError {
    /// `position` is a 0-based character offset.
    #[error("syntax error at position {position}: expected {expected}")]
    Syntax { position: usize, expected: String },
    #[error("semantic error at position {position}: {message}")]
    Semantic { position: usize, message: String },
}

impl GenotypeError {
    pub fn position(&self) -> usize {
        match self {
            GenotypeError::Syntax { position, .. } | GenotypeError::Semantic { position, .. } => {
                *position
            }
        }
    }
}

/// Genotype text that is known to parse.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Genotype(String);

impl Genotype {
    pub fn new(text: impl Into<String>) -> Result<Self, GenotypeError> {
        let text = text.into();
        parse(&text)?;
        Ok(Genotype(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn body_plan(&self) -> BodyPlan {
        parse(&self.0).expect("Genotype holds parseable text")
    }

    pub(crate) fn from_trusted(text: String) -> Self {
        debug_assert!(parse(&text).is_ok(), "untrusted genotype {text}");
        Genotype(text)
    }
}

impl fmt::Display for Genotype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for Genotype {
    type Error = GenotypeError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Genotype::new(value)
    }
}

impl From<Genotype> for String {
    fn from(g: Genotype) -> String {
        g.0
    }
}

/// Parse genotype text into a body plan.
pub fn parse(text: &str) -> Result<BodyPlan, GenotypeError> {
    let tree = syntax::parse_tree(text)?;
    Ok(plan::compile(&tree))
}

/// Canonical genotype text for a body plan.
pub fn serialize(plan: &BodyPlan) -> Result<Genotype, PlanError> {
    let tree = plan::decompile(plan)?;
    Ok(Genotype::from_trusted(syntax::render(&tree)))
}
