//! Source locations and diagnostics shared by the parser, the checker and the linker.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

/// A region of source text. Line and column are 1-based; `length` is at least 1.
///
/// Spans never take part in structural equality: two spans always compare
/// equal, so models that differ only in layout are `==`.
#[derive(Clone, Debug, Serialize)]
pub struct SourceSpan {
    pub file: Arc<str>,
    pub line: u32,
    pub column: u32,
    pub length: u32,
    /// Byte offset of the first character.
    pub offset: u32,
}

impl SourceSpan {
    pub fn new(file: Arc<str>, line: u32, column: u32, length: u32, offset: u32) -> Self {
        SourceSpan {
            file,
            line,
            column,
            length: length.max(1),
            offset,
        }
    }

    /// Placeholder for synthesized nodes.
    pub fn synthetic() -> Self {
        SourceSpan::new(Arc::from("<synthetic>"), 1, 1, 1, 0)
    }
}

impl PartialEq for SourceSpan {
    fn eq(&self, _other: &Self) -> bool {
        true
    }
}

impl Default for SourceSpan {
    fn default() -> Self {
        SourceSpan::synthetic()
    }
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.line, self.column)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum DiagnosticKind {
    // syntax
    SyntaxError,
    EmptyGrammar,
    NestingTooDeep,
    // schema
    CyclicInheritance,
    CyclicInterface,
    DuplicateDefinition,
    DuplicateField,
    MissingImplementation,
    SignatureMismatch,
    InvalidConstructor,
    InvalidInterface,
    // names and types
    UnknownType,
    UnknownName,
    UnknownField,
    UnknownMethod,
    UnknownRule,
    UnknownActivity,
    UnknownConstructor,
    TypeMismatch,
    AbstractInstantiation,
    VisibilityViolation,
    ReturnTypeMismatch,
    DuplicateName,
    InvalidPattern,
    InvalidRule,
    InvalidActivity,
    InvalidStatement,
    NoEntry,
    // modules
    AccessViolation,
    UnresolvedImport,
    ChecksumMismatch,
    DuplicateSymbol,
    VersionConflict,
    ManifestMismatch,
    MalformedArchive,
    PrivateTypeInPublicSignature,
    EmptyExport,
}

impl DiagnosticKind {
    pub fn as_str(self) -> &'static str {
        // Debug output of a fieldless enum is its variant name.
        match self {
            DiagnosticKind::SyntaxError => "SyntaxError",
            DiagnosticKind::EmptyGrammar => "EmptyGrammar",
            DiagnosticKind::NestingTooDeep => "NestingTooDeep",
            DiagnosticKind::CyclicInheritance => "CyclicInheritance",
            DiagnosticKind::CyclicInterface => "CyclicInterface",
            DiagnosticKind::DuplicateDefinition => "DuplicateDefinition",
            DiagnosticKind::DuplicateField => "DuplicateField",
            DiagnosticKind::MissingImplementation => "MissingImplementation",
            DiagnosticKind::SignatureMismatch => "SignatureMismatch",
            DiagnosticKind::InvalidConstructor => "InvalidConstructor",
            DiagnosticKind::InvalidInterface => "InvalidInterface",
            DiagnosticKind::UnknownType => "UnknownType",
            DiagnosticKind::UnknownName => "UnknownName",
            DiagnosticKind::UnknownField => "UnknownField",
            DiagnosticKind::UnknownMethod => "UnknownMethod",
            DiagnosticKind::UnknownRule => "UnknownRule",
            DiagnosticKind::UnknownActivity => "UnknownActivity",
            DiagnosticKind::UnknownConstructor => "UnknownConstructor",
            DiagnosticKind::TypeMismatch => "TypeMismatch",
            DiagnosticKind::AbstractInstantiation => "AbstractInstantiation",
            DiagnosticKind::VisibilityViolation => "VisibilityViolation",
            DiagnosticKind::ReturnTypeMismatch => "ReturnTypeMismatch",
            DiagnosticKind::DuplicateName => "DuplicateName",
            DiagnosticKind::InvalidPattern => "InvalidPattern",
            DiagnosticKind::InvalidRule => "InvalidRule",
            DiagnosticKind::InvalidActivity => "InvalidActivity",
            DiagnosticKind::InvalidStatement => "InvalidStatement",
            DiagnosticKind::NoEntry => "NoEntry",
            DiagnosticKind::AccessViolation => "AccessViolation",
            DiagnosticKind::UnresolvedImport => "UnresolvedImport",
            DiagnosticKind::ChecksumMismatch => "ChecksumMismatch",
            DiagnosticKind::DuplicateSymbol => "DuplicateSymbol",
            DiagnosticKind::VersionConflict => "VersionConflict",
            DiagnosticKind::ManifestMismatch => "ManifestMismatch",
            DiagnosticKind::MalformedArchive => "MalformedArchive",
            DiagnosticKind::PrivateTypeInPublicSignature => "PrivateTypeInPublicSignature",
            DiagnosticKind::EmptyExport => "EmptyExport",
        }
    }
}

impl fmt::Display for DiagnosticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub kind: DiagnosticKind,
    /// The grammar entity the diagnostic is about (class, method, rule, ...).
    pub entity: Option<String>,
    pub message: String,
    pub span: Option<SourceSpan>,
}

impl Diagnostic {
    pub fn error(kind: DiagnosticKind, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Error,
            kind,
            entity: None,
            message: message.into(),
            span: None,
        }
    }

    pub fn warning(kind: DiagnosticKind, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Warning,
            ..Diagnostic::error(kind, message)
        }
    }

    pub fn with_entity(mut self, entity: impl Into<String>) -> Self {
        self.entity = Some(entity.into());
        self
    }

    pub fn at(mut self, span: &SourceSpan) -> Self {
        self.span = Some(span.clone());
        self
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }

    /// Stable key used for order-independent comparison of diagnostic sets.
    pub fn sort_key(&self) -> (Severity, DiagnosticKind, String, String) {
        (
            self.severity,
            self.kind,
            self.entity.clone().unwrap_or_default(),
            self.message.clone(),
        )
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        if let Some(span) = &self.span {
            write!(f, "{span}: ")?;
        }
        write!(f, "{sev}[{}]: {}", self.kind, self.message)
    }
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(Diagnostic::is_error)
}
