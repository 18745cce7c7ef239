//! Error kinds and their exit codes.
//!
//! Every error is printed to standard error as `error[<kind>]: <message>`.

use std::fmt;

use sc3sim::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Anything without a more specific code (traps, I/O on outputs).
    Other,
    Usage,
    Input,
    Deadlock,
    Validation,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Other => 1,
            Kind::Usage => 2,
            Kind::Input => 3,
            Kind::Deadlock => 4,
            Kind::Validation => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kind::Other => "other",
            Kind::Usage => "usage",
            Kind::Input => "input",
            Kind::Deadlock => "deadlock",
            Kind::Validation => "validation",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: Kind, message: impl Into<String>) -> Self {
        CliError { kind, message: message.into() }
    }

    pub fn input(message: impl Into<String>) -> Self {
        Self::new(Kind::Input, message)
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(Kind::Usage, message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.kind.name(), self.message)
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        let kind = match &e {
            SimError::Input(_) | SimError::Config(_) | SimError::Launch(_) => Kind::Input,
            SimError::Deadlock(_) => Kind::Deadlock,
            SimError::Validation(_) => Kind::Validation,
            SimError::Trap(_) => Kind::Other,
        };
        CliError::new(kind, e.to_string())
    }
}
