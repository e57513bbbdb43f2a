//! Attribute lineage: the identity an attribute carries from its original
//! declaration through dependency chains and renames.
//!
//! Two attributes are homologous when their lineages intersect. Ordinary
//! lineages are single origins, so intersection degenerates to equality;
//! a foreign key through a union target carries both operands' origins and
//! is homologous to keys of either.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

static NEXT_COMPUTED: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Origin {
    /// Declared directly in `entity` under `attr`.
    Declared { entity: String, attr: String },
    /// Introduced by a calculated projection attribute; each computation
    /// event gets a fresh serial.
    Computed(u64),
    /// Universal-set attribute: matches any namesake.
    Universal,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Lineage {
    origins: BTreeSet<Origin>,
}

impl Lineage {
    pub fn declared(entity: &str, attr: &str) -> Self {
        Lineage {
            origins: BTreeSet::from([Origin::Declared {
                entity: entity.to_string(),
                attr: attr.to_string(),
            }]),
        }
    }

    pub fn fresh_computed() -> Self {
        Lineage {
            origins: BTreeSet::from([Origin::Computed(
                NEXT_COMPUTED.fetch_add(1, Ordering::Relaxed),
            )]),
        }
    }

    pub fn universal() -> Self {
        Lineage {
            origins: BTreeSet::from([Origin::Universal]),
        }
    }

    pub fn is_universal(&self) -> bool {
        self.origins.contains(&Origin::Universal)
    }

    /// Equivalence class built by a union target: origins of both operands.
    pub fn merge(&self, other: &Lineage) -> Lineage {
        Lineage {
            origins: self.origins.union(&other.origins).cloned().collect(),
        }
    }

    pub fn homologous(&self, other: &Lineage) -> bool {
        if self.is_universal() || other.is_universal() {
            return true;
        }
        !self.origins.is_disjoint(&other.origins)
    }

    /// True when the lineage originates (at least in part) in `entity`.
    pub fn originates_in(&self, entity: &str) -> bool {
        self.origins
            .iter()
            .any(|o| matches!(o, Origin::Declared { entity: e, .. } if e == entity))
    }
}

impl fmt::Display for Lineage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for o in &self.origins {
            if !first {
                write!(f, "|")?;
            }
            first = false;
            match o {
                Origin::Declared { entity, attr } => write!(f, "{entity}.{attr}")?,
                Origin::Computed(n) => write!(f, "#{n}")?,
                Origin::Universal => write!(f, "*")?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn homology_is_origin_equality_for_plain_lineages() {
        let a = Lineage::declared("Student", "student_id");
        let b = Lineage::declared("Student", "student_id");
        let c = Lineage::declared("Department", "dept");
        assert!(a.homologous(&b));
        assert!(!a.homologous(&c));
    }

    #[test]
    fn union_merge_is_homologous_to_both_operands() {
        let s = Lineage::declared("Student", "person_id");
        let e = Lineage::declared("Employee", "person_id");
        let merged = s.merge(&e);
        assert!(merged.homologous(&s));
        assert!(merged.homologous(&e));
        assert!(!s.homologous(&e));
    }

    #[test]
    fn computed_lineages_are_distinct() {
        assert!(!Lineage::fresh_computed().homologous(&Lineage::fresh_computed()));
    }
}
