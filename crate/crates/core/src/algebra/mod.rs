//! Static analysis and evaluation of query expressions.
//!
//! Every operator output is a well-formed entity set: a known entity type,
//! a non-null primary key, and unambiguous attributes. `analyze` computes
//! the result header without touching data; `eval` materializes rows.

mod analyze;
mod eval;

pub use analyze::{analyze, scalar_type, HeaderSource};
pub use eval::{
    eval, eval_condition_on_row, eval_scalar, materialize_universal, Relation, RelationSource,
};

use serde::{Deserialize, Serialize};

use crate::lineage::Lineage;
use crate::value::Datatype;

/// One attribute of a relation header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttrInfo {
    pub name: String,
    pub datatype: Datatype,
    pub lineage: Lineage,
    pub is_primary: bool,
    pub nullable: bool,
}

/// The static shape of a query result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationHeader {
    pub attrs: Vec<AttrInfo>,
    pub entity_type: String,
}

impl RelationHeader {
    pub fn find(&self, name: &str) -> Option<&AttrInfo> {
        self.attrs.iter().find(|a| a.name == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.attrs.iter().position(|a| a.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.attrs.iter().map(|a| a.name.as_str()).collect()
    }

    pub fn primary_names(&self) -> Vec<&str> {
        self.attrs
            .iter()
            .filter(|a| a.is_primary)
            .map(|a| a.name.as_str())
            .collect()
    }

    /// Homologous namesake attributes shared with `other`: the matching
    /// basis of every binary operator. The phantom attribute is always
    /// conceptually matched and is not listed.
    pub fn homologous_namesakes(&self, other: &RelationHeader) -> Vec<String> {
        self.attrs
            .iter()
            .filter_map(|a| {
                other
                    .find(&a.name)
                    .filter(|b| a.lineage.homologous(&b.lineage))
                    .map(|_| a.name.clone())
            })
            .collect()
    }

    /// Namesake attributes that are not homologous; nonempty means the two
    /// headers are not joinable.
    pub fn offending_namesakes(&self, other: &RelationHeader) -> Vec<String> {
        self.attrs
            .iter()
            .filter_map(|a| {
                other
                    .find(&a.name)
                    .filter(|b| !a.lineage.homologous(&b.lineage))
                    .map(|_| a.name.clone())
            })
            .collect()
    }

    pub fn joinable(&self, other: &RelationHeader) -> Result<(), Vec<String>> {
        let offending = self.offending_namesakes(other);
        if offending.is_empty() {
            Ok(())
        } else {
            Err(offending)
        }
    }
}
