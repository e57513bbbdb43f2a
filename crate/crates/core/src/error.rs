//! Error types for every stage: lexing, parsing, schema validation, query
//! analysis/evaluation, and storage.

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("lex error at {line}:{column}: {message}")]
pub struct LexError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("parse error at {line}:{column}: expected {expected}, found {found}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub expected: String,
    pub found: String,
}

impl From<LexError> for ParseError {
    fn from(e: LexError) -> Self {
        ParseError {
            line: e.line,
            column: e.column,
            expected: "valid token".into(),
            found: e.message,
        }
    }
}

/// Schema-declaration errors.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum CatalogError {
    #[error("unknown entity set `{0}`")]
    UnknownReference(String),
    #[error("`{0}` is not yet declared; dependencies may only reference upstream entity sets")]
    CycleWouldForm(String),
    #[error("entity set `{0}` is already declared")]
    DuplicateEntityName(String),
    #[error("attribute `{attr}` in `{entity}` conflicts with an existing declaration")]
    DuplicateAttribute { entity: String, attr: String },
    #[error("nullable dependencies may only be declared in the secondary section")]
    NullablePrimaryDependency,
    #[error("`{0}` is a part entity set and cannot serve as a master")]
    NestedMasterPart(String),
    #[error("part declaration `{0}` must begin with the dependency `-> master`")]
    PartWithoutMasterDep(String),
    #[error("`master` target is only legal inside a part declaration")]
    MasterOutsidePart,
    #[error("invalid entity set name `{0}`")]
    InvalidName(String),
    #[error("primary key attribute `{0}` cannot have a null default")]
    NullablePrimaryAttribute(String),
    #[error("in dependency target: {0}")]
    Target(#[from] QueryError),
}

/// Static analysis and evaluation errors for query expressions.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum QueryError {
    #[error("unknown entity set `{0}`")]
    UnknownReference(String),
    #[error("operands are not joinable; ambiguous namesake attributes: {0:?}")]
    NotJoinable(Vec<String>),
    #[error("union operands are incompatible: {0}")]
    UnionIncompatible(String),
    #[error("union operands share primary key values while secondary attributes are present")]
    UnionOverlap,
    #[error("attribute `{0}` is ambiguous between the aggregate operands")]
    AmbiguousAttribute(String),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("aggregation function `{0}` may only appear in aggr attribute definitions")]
    AggrFnOutsideAggregate(String),
    #[error("projection output name `{0}` collides")]
    PrimaryRenameCollision(String),
    #[error("duplicate output attribute `{0}`")]
    DuplicateOutputName(String),
    #[error("a universal set with attributes cannot be evaluated on its own")]
    UniversalNotMaterializable,
    #[error("a universal set may only be restricted by an entity set")]
    UnsupportedUniversalRestriction,
    #[error("type mismatch in expression: {0}")]
    TypeMismatch(String),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
}

/// Data-manipulation errors. Any error leaves the store untouched.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum StoreError {
    #[error("unknown entity set `{0}`")]
    UnknownEntity(String),
    #[error("attribute `{attr}` rejects value `{value}` for datatype {datatype}")]
    DomainViolation {
        attr: String,
        datatype: String,
        value: String,
    },
    #[error("duplicate primary key value in `{entity}`: ({key})")]
    DuplicateKey { entity: String, key: String },
    #[error("referential violation in `{entity}`: no referenced element for ({key}) in `{target}`")]
    ReferentialViolation {
        entity: String,
        target: String,
        key: String,
    },
    #[error("unique dependency violation in `{entity}`: ({key}) is already referenced")]
    UniqueDependencyViolation { entity: String, key: String },
    #[error("`{0}` is a part entity set; insert through its master")]
    PartDirectInsert(String),
    #[error("`{0}` is a part entity set; delete through its master")]
    PartDirectDelete(String),
    #[error("missing value for attribute `{0}`")]
    MissingAttribute(String),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("nullable dependency attributes {0:?} must be all null or all set")]
    PartialNullReference(Vec<String>),
    #[error("primary key attribute `{0}` cannot be updated")]
    PrimaryKeyUpdate(String),
    #[error("foreign key attribute `{0}` cannot be updated")]
    ForeignKeyUpdate(String),
    #[error("`{0}` is not a part of this master")]
    UnknownPart(String),
    #[error(transparent)]
    Query(#[from] QueryError),
}

/// Populate-driver errors.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ComputeError {
    #[error("no make function registered for `{0}`")]
    NoMakeRegistered(String),
    #[error("declarative make is not available for `{0}`: {1}")]
    DeclarativeUnsupported(String, String),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Query(#[from] QueryError),
}
