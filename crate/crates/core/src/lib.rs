//! An entity-normalized relational data model: schema definition with
//! dependencies, a five-operator query algebra, an in-memory store with
//! referential and compositional integrity, a SQL transpiler, and schema
//! diagrams.

pub mod algebra;
pub mod catalog;
pub mod compute;
pub mod diagram;
pub mod error;
pub mod lang;
pub mod lineage;
pub mod store;
pub mod transpile;
pub mod value;

pub use catalog::Catalog;
pub use store::Store;
pub use value::{Datatype, Value};
