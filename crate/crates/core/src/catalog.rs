//! The schema catalog: declared entity sets, their attributes and
//! dependencies, and the workflow order that keeps the dependency graph
//! acyclic by construction.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::algebra::{analyze, AttrInfo, HeaderSource, RelationHeader};
use crate::error::{CatalogError, QueryError};
use crate::lang::ast::*;
use crate::lineage::Lineage;
use crate::value::Datatype;

/// One attribute of a declared entity set, in declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttrSpec {
    pub name: String,
    pub datatype: Datatype,
    pub default: Option<Literal>,
    pub comment: Option<String>,
    pub is_primary: bool,
    /// True for secondary attributes that admit null (declared with
    /// `= null` or introduced by a nullable dependency).
    pub nullable: bool,
    pub lineage: Lineage,
    /// True when the attribute was introduced by a `->` dependency.
    pub from_dependency: bool,
}

/// One `->` dependency of a declared entity set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepSpec {
    pub in_primary: bool,
    pub unique: bool,
    pub nullable: bool,
    /// The referenced entity-set expression (with any restrictions intact).
    pub target: QueryExpr,
    /// Foreign key attribute names in this entity set; these are the primary
    /// key names of the target expression.
    pub fk_attrs: Vec<String>,
    /// True for the `-> master` dependency of a part declaration.
    pub is_master: bool,
}

/// A declared entity set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntitySpec {
    /// Full name; parts use the dotted form `Master.Part`.
    pub name: String,
    pub master: Option<String>,
    pub attrs: Vec<AttrSpec>,
    pub deps: Vec<DepSpec>,
}

impl EntitySpec {
    /// A singleton entity set has an empty primary key and holds at most
    /// one element.
    pub fn is_singleton(&self) -> bool {
        !self.attrs.iter().any(|a| a.is_primary)
    }

    pub fn primary_attrs(&self) -> Vec<&AttrSpec> {
        self.attrs.iter().filter(|a| a.is_primary).collect()
    }

    pub fn attr(&self, name: &str) -> Option<&AttrSpec> {
        self.attrs.iter().find(|a| a.name == name)
    }

    pub fn header(&self) -> RelationHeader {
        RelationHeader {
            attrs: self
                .attrs
                .iter()
                .map(|a| AttrInfo {
                    name: a.name.clone(),
                    datatype: a.datatype.clone(),
                    lineage: a.lineage.clone(),
                    is_primary: a.is_primary,
                    nullable: a.nullable,
                })
                .collect(),
            entity_type: self.name.clone(),
        }
    }
}

/// The schema catalog. Entity sets are kept in declaration order, which is
/// a topological order of the dependency graph.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    entities: Vec<EntitySpec>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

fn valid_entity_component(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_uppercase())
        && chars.all(|c| c.is_ascii_alphanumeric())
}

/// Remove restriction operators from a dependency target, leaving the
/// entity sets it structurally references. Referential closure on delete
/// ignores restrictions: a restriction narrows which elements may be
/// referenced on insert, never which deletions cascade.
pub fn strip_restrictions(expr: &QueryExpr) -> QueryExpr {
    match expr {
        QueryExpr::Restrict { input, .. } => strip_restrictions(input),
        QueryExpr::Join(a, b) => QueryExpr::Join(
            Box::new(strip_restrictions(a)),
            Box::new(strip_restrictions(b)),
        ),
        QueryExpr::Project {
            input,
            items,
            ellipsis,
        } => QueryExpr::Project {
            input: Box::new(strip_restrictions(input)),
            items: items.clone(),
            ellipsis: *ellipsis,
        },
        QueryExpr::Aggregate {
            input,
            group,
            items,
        } => QueryExpr::Aggregate {
            input: Box::new(strip_restrictions(input)),
            group: Box::new(strip_restrictions(group)),
            items: items.clone(),
        },
        QueryExpr::Union(a, b) => QueryExpr::Union(
            Box::new(strip_restrictions(a)),
            Box::new(strip_restrictions(b)),
        ),
        QueryExpr::Base(_) | QueryExpr::Universal(_) => expr.clone(),
    }
}

impl Catalog {
    pub fn new() -> Self {
        Catalog::default()
    }

    /// Rebuild the name index (needed after deserialization).
    pub fn reindex(&mut self) {
        self.index = self
            .entities
            .iter()
            .enumerate()
            .map(|(i, e)| (e.name.clone(), i))
            .collect();
    }

    pub fn get(&self, name: &str) -> Option<&EntitySpec> {
        self.index.get(name).map(|&i| &self.entities[i])
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    /// Entity sets in declaration (topological) order.
    pub fn entities(&self) -> &[EntitySpec] {
        &self.entities
    }

    /// The part entity sets of a master, in declaration order.
    pub fn parts_of(&self, master: &str) -> Vec<&EntitySpec> {
        self.entities
            .iter()
            .filter(|e| e.master.as_deref() == Some(master))
            .collect()
    }

    /// Entity sets (in declaration order) with a dependency whose
    /// restriction-stripped target references `name`.
    pub fn dependents_of(&self, name: &str) -> Vec<&EntitySpec> {
        self.entities
            .iter()
            .filter(|e| {
                e.deps.iter().any(|d| {
                    let mut refs = Vec::new();
                    strip_restrictions(&d.target).base_refs(&mut refs);
                    refs.iter().any(|r| r == name)
                })
            })
            .collect()
    }

    /// The domain of new elements for a populated entity set: the join of
    /// the projections of its primary dependency targets onto their primary
    /// keys. `None` when the entity set has no primary dependencies.
    pub fn primary_dependency_domain(&self, name: &str) -> Option<QueryExpr> {
        let spec = self.get(name)?;
        let mut expr: Option<QueryExpr> = None;
        for dep in spec.deps.iter().filter(|d| d.in_primary) {
            let target = if dep.is_master {
                QueryExpr::Base(spec.master.clone()?)
            } else {
                dep.target.clone()
            };
            let proj = QueryExpr::Project {
                input: Box::new(target),
                items: Vec::new(),
                ellipsis: false,
            };
            expr = Some(match expr {
                None => proj,
                Some(e) => QueryExpr::Join(Box::new(e), Box::new(proj)),
            });
        }
        expr
    }

    /// Declare a new entity set. Dependencies may only reference entity
    /// sets that are already declared, so the graph stays acyclic.
    pub fn declare(&mut self, decl: &EntityDecl) -> Result<(), CatalogError> {
        let name = decl.name.clone();
        if self.contains(&name) {
            return Err(CatalogError::DuplicateEntityName(name));
        }
        let master = match name.split_once('.') {
            Some((m, p)) => {
                if !valid_entity_component(m) || !valid_entity_component(p) {
                    return Err(CatalogError::InvalidName(name.clone()));
                }
                let master_spec = self
                    .get(m)
                    .ok_or_else(|| CatalogError::UnknownReference(m.to_string()))?;
                if master_spec.master.is_some() {
                    return Err(CatalogError::NestedMasterPart(m.to_string()));
                }
                Some(m.to_string())
            }
            None => {
                if !valid_entity_component(&name) {
                    return Err(CatalogError::InvalidName(name.clone()));
                }
                None
            }
        };
        if master.is_some() {
            let first_is_master_dep = matches!(
                decl.primary_items.first(),
                Some(DeclItem::Dependency(DependencyDeclItem {
                    target: DepTarget::Master,
                    ..
                }))
            );
            if !first_is_master_dep {
                return Err(CatalogError::PartWithoutMasterDep(name));
            }
        }

        let mut spec = EntitySpec {
            name: name.clone(),
            master: master.clone(),
            attrs: Vec::new(),
            deps: Vec::new(),
        };
        let sections = [
            (true, &decl.primary_items),
            (false, &decl.secondary_items),
        ];
        for (in_primary, items) in sections {
            for item in items.iter() {
                match item {
                    DeclItem::Attr(a) => {
                        if spec.attr(&a.name).is_some() {
                            return Err(CatalogError::DuplicateAttribute {
                                entity: name,
                                attr: a.name.clone(),
                            });
                        }
                        if in_primary && matches!(a.default, Some(Literal::Null)) {
                            return Err(CatalogError::NullablePrimaryAttribute(a.name.clone()));
                        }
                        spec.attrs.push(AttrSpec {
                            name: a.name.clone(),
                            datatype: a.datatype.clone(),
                            default: a.default.clone(),
                            comment: a.comment.clone(),
                            is_primary: in_primary,
                            nullable: !in_primary && matches!(a.default, Some(Literal::Null)),
                            lineage: Lineage::declared(&name, &a.name),
                            from_dependency: false,
                        });
                    }
                    DeclItem::Dependency(d) => {
                        if in_primary && d.nullable {
                            return Err(CatalogError::NullablePrimaryDependency);
                        }
                        let target = match &d.target {
                            DepTarget::Master => {
                                let Some(m) = &master else {
                                    return Err(CatalogError::MasterOutsidePart);
                                };
                                QueryExpr::Base(m.clone())
                            }
                            DepTarget::Expr(e) => {
                                let mut refs = Vec::new();
                                e.base_refs(&mut refs);
                                if refs.iter().any(|r| r == &name) {
                                    return Err(CatalogError::CycleWouldForm(name));
                                }
                                e.clone()
                            }
                        };
                        let header = analyze(&target, self)?;
                        let mut fk_attrs = Vec::new();
                        for attr in header.attrs.iter().filter(|a| a.is_primary) {
                            fk_attrs.push(attr.name.clone());
                            if let Some(existing) = spec.attr(&attr.name) {
                                // converging dependencies share the
                                // attribute only when it is the same one
                                if !existing.lineage.homologous(&attr.lineage) {
                                    return Err(CatalogError::DuplicateAttribute {
                                        entity: name,
                                        attr: attr.name.clone(),
                                    });
                                }
                                continue;
                            }
                            spec.attrs.push(AttrSpec {
                                name: attr.name.clone(),
                                datatype: attr.datatype.clone(),
                                default: None,
                                comment: None,
                                is_primary: in_primary,
                                nullable: d.nullable,
                                lineage: attr.lineage.clone(),
                                from_dependency: true,
                            });
                        }
                        spec.deps.push(DepSpec {
                            in_primary,
                            unique: d.unique,
                            nullable: d.nullable,
                            target,
                            fk_attrs,
                            is_master: matches!(d.target, DepTarget::Master),
                        });
                    }
                }
            }
        }
        self.index.insert(name, self.entities.len());
        self.entities.push(spec);
        Ok(())
    }
}

impl HeaderSource for Catalog {
    fn base_header(&self, name: &str) -> Result<RelationHeader, QueryError> {
        self.get(name)
            .map(EntitySpec::header)
            .ok_or_else(|| QueryError::UnknownReference(name.to_string()))
    }
}
