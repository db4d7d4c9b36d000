//! ISO 10303-21 (STEP clear-text) reading and writing.

mod lexer;
mod parser;
mod writer;

use indexmap::IndexMap;
use thiserror::Error;

pub use lexer::{tokenize, Position, Token, TokenKind};
pub use parser::parse_file;
pub use writer::write_step;
pub(crate) use writer::write_argument;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("unterminated string literal starting at {line}:{column}")]
    UnterminatedString { line: usize, column: usize },
    #[error("unterminated comment starting at {line}:{column}")]
    UnterminatedComment { line: usize, column: usize },
    #[error("illegal character {found:?} at {line}:{column}")]
    IllegalCharacter {
        found: char,
        line: usize,
        column: usize,
    },
    #[error("missing ISO-10303-21 preamble")]
    MissingIsoHeader,
    #[error("malformed header section at {line}:{column}: {reason}")]
    MalformedHeader {
        reason: String,
        line: usize,
        column: usize,
    },
    #[error("file has no DATA section")]
    MissingDataSection,
    #[error("instance #{0} defined more than once")]
    DuplicateInstanceId(u64),
    #[error("malformed instance{} at {line}:{column}: {reason}", id.map(|i| format!(" #{i}")).unwrap_or_default())]
    MalformedInstance {
        id: Option<u64>,
        reason: String,
        line: usize,
        column: usize,
    },
}

/// One argument value of an entity record.
#[derive(Debug, Clone, PartialEq)]
pub enum Argument {
    /// Integer or real; `raw` is the literal text as written.
    Number { raw: String, value: f64 },
    Text(String),
    Enum(String),
    Binary(String),
    Reference(u64),
    List(Vec<Argument>),
    /// `$`
    Unset,
    /// `*`
    Inherited,
    /// `NAME(inner)` typed parameter, e.g. `LENGTH_MEASURE(2.5)`.
    Typed(String, Box<Argument>),
}

impl Argument {
    pub fn number(raw: impl Into<String>) -> Self {
        let raw = raw.into();
        let value = raw.parse::<f64>().unwrap_or(f64::NAN);
        Argument::Number { raw, value }
    }

    /// Calls `f` for every reference target in depth-first argument order.
    pub fn for_each_reference(&self, f: &mut impl FnMut(u64)) {
        match self {
            Argument::Reference(id) => f(*id),
            Argument::List(items) => items.iter().for_each(|a| a.for_each_reference(f)),
            Argument::Typed(_, inner) => inner.for_each_reference(f),
            _ => {}
        }
    }
}

/// `NAME(args)`: a header record, or one part of an entity instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub name: String,
    pub args: Vec<Argument>,
}

/// A DATA-section instance. Simple instances carry one record; complex
/// (multi-type) instances carry one record per entity type.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityInstance {
    pub id: u64,
    pub records: Vec<Record>,
}

impl EntityInstance {
    pub fn types(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.name.as_str())
    }

    pub fn is_complex(&self) -> bool {
        self.records.len() > 1
    }

    /// Reference targets in record, then argument, order.
    pub fn references(&self) -> Vec<u64> {
        let mut out = Vec::new();
        for record in &self.records {
            for arg in &record.args {
                arg.for_each_reference(&mut |id| out.push(id));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepFile {
    pub header: Vec<Record>,
    /// Instances keyed by id, in file order.
    pub instances: IndexMap<u64, EntityInstance>,
    /// First name listed in FILE_SCHEMA, empty if absent.
    pub schema_name: String,
}

/// A reference whose target id has no instance in the file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DanglingReference {
    pub source: u64,
    pub target: u64,
    /// Record index followed by nested argument indices.
    pub path: Vec<usize>,
}

impl StepFile {
    /// Tokenize and parse in one step.
    pub fn parse(input: &[u8]) -> Result<Self, StepError> {
        parse_file(&tokenize(input)?)
    }

    /// All references that do not resolve, ordered by source id and then
    /// argument position.
    pub fn validate_references(&self) -> Vec<DanglingReference> {
        let mut ids: Vec<u64> = self.instances.keys().copied().collect();
        ids.sort_unstable();
        let mut out = Vec::new();
        for id in ids {
            let inst = &self.instances[&id];
            for (ri, record) in inst.records.iter().enumerate() {
                for (ai, arg) in record.args.iter().enumerate() {
                    let mut path = vec![ri, ai];
                    self.collect_dangling(id, arg, &mut path, &mut out);
                }
            }
        }
        out
    }

    fn collect_dangling(
        &self,
        source: u64,
        arg: &Argument,
        path: &mut Vec<usize>,
        out: &mut Vec<DanglingReference>,
    ) {
        match arg {
            Argument::Reference(target) if !self.instances.contains_key(target) => {
                out.push(DanglingReference {
                    source,
                    target: *target,
                    path: path.clone(),
                })
            }
            Argument::List(items) => {
                for (i, item) in items.iter().enumerate() {
                    path.push(i);
                    self.collect_dangling(source, item, path, out);
                    path.pop();
                }
            }
            Argument::Typed(_, inner) => self.collect_dangling(source, inner, path, out),
            _ => {}
        }
    }
}
