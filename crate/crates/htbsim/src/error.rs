use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<ConfigError>,
    },
    #[error("line {line}: malformed XML: {msg}")]
    Syntax { line: u32, msg: String },
    #[error("malformed TOML: {0}")]
    TomlSyntax(String),
    #[error("{0}")]
    TomlSchema(String),
    #[error("line {line}: unexpected element <{element}>, expected <class>")]
    UnexpectedElement { line: u32, element: String },
    #[error("line {line}: <class> without an id attribute")]
    MissingId { line: u32 },
    #[error("line {line}: class {name:?} already defined on line {first}")]
    DuplicateClass { line: u32, name: String, first: u32 },
    #[error("line {line}: unknown field <{field}> in class {class:?}")]
    UnknownField { line: u32, class: String, field: String },
    #[error("line {line}: <{field}> given twice in class {class:?}")]
    RepeatedField { line: u32, class: String, field: String },
    #[error("line {line}: class {class:?} is missing <{field}>")]
    MissingField { line: u32, class: String, field: &'static str },
    #[error("line {line}: <{field}> of class {class:?}: {msg}")]
    BadValue { line: u32, class: String, field: &'static str, msg: String },
    #[error("line {line}: <{field}> only applies to leaf classes, found in {class:?}")]
    LeafOnlyField { line: u32, class: String, field: &'static str },
    #[error("line {line}: class {name:?}: {msg}")]
    Naming { line: u32, name: String, msg: String },
    #[error("{field}: {msg}")]
    ScenarioValue { field: String, msg: String },
}

impl ConfigError {
    /// Unreadable or syntactically broken input, as opposed to a file that
    /// parses but describes something invalid.
    pub fn is_unreadable(&self) -> bool {
        match self {
            ConfigError::Io { .. } | ConfigError::Syntax { .. } | ConfigError::TomlSyntax(_) => true,
            ConfigError::InFile { source, .. } => source.is_unreadable(),
            _ => false,
        }
    }
}
