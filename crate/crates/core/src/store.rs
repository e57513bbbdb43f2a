//! In-memory base-relation storage with atomic insert, cascading delete,
//! cautious update, and master-part transactional insert.
//!
//! Every mutation either commits in full (bumping the generation counter)
//! or leaves the store untouched. Queries read a consistent snapshot.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{eval, eval_condition_on_row, HeaderSource, Relation, RelationHeader, RelationSource};
use crate::catalog::{strip_restrictions, Catalog, DepSpec, EntitySpec};
use crate::error::{CatalogError, QueryError, StoreError};
use crate::lang::ast::{Condition, EntityDecl, Literal, Manipulation};
use crate::value::{conform, Datatype, Value};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct Table {
    rows: Vec<Vec<Value>>,
}

/// The data store: a catalog plus one row set per declared entity set.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Store {
    catalog: Catalog,
    tables: BTreeMap<String, Table>,
    generation: u64,
}

/// Row counts removed per entity set by a cascading delete.
pub type DeleteCounts = BTreeMap<String, usize>;

impl Store {
    pub fn new() -> Self {
        Store::default()
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    /// Monotonic commit counter; each successful mutation bumps it.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn declare(&mut self, decl: &EntityDecl) -> Result<(), CatalogError> {
        self.catalog.declare(decl)?;
        self.tables.insert(decl.name.clone(), Table::default());
        Ok(())
    }

    /// Raw rows of one entity set, in declared attribute order.
    pub fn base_rows(&self, entity: &str) -> Result<Vec<Vec<Value>>, QueryError> {
        self.catalog
            .get(entity)
            .map(|_| self.tables.get(entity).map_or_else(Vec::new, |t| t.rows.clone()))
            .ok_or_else(|| QueryError::UnknownReference(entity.to_string()))
    }

    pub fn row_count(&self, entity: &str) -> usize {
        self.tables.get(entity).map_or(0, |t| t.rows.len())
    }

    fn spec(&self, entity: &str) -> Result<EntitySpec, StoreError> {
        self.catalog
            .get(entity)
            .cloned()
            .ok_or_else(|| StoreError::UnknownEntity(entity.to_string()))
    }

    fn pk_tuple(spec: &EntitySpec, row: &[Value]) -> Vec<Value> {
        spec.attrs
            .iter()
            .zip(row)
            .filter(|(a, _)| a.is_primary)
            .map(|(_, v)| v.clone())
            .collect()
    }

    fn key_text(key: &[Value]) -> String {
        key.iter()
            .map(Value::to_string)
            .collect::<Vec<_>>()
            .join(", ")
    }

    /// Foreign-key tuple of a row under one dependency; `None` when the
    /// dependency is nullable and every fk attribute is null.
    fn fk_tuple(
        spec: &EntitySpec,
        dep: &DepSpec,
        row: &[Value],
    ) -> Result<Option<Vec<Value>>, StoreError> {
        let values: Vec<Value> = dep
            .fk_attrs
            .iter()
            .map(|name| {
                spec.attrs
                    .iter()
                    .position(|a| &a.name == name)
                    .map(|i| row[i].clone())
                    .ok_or_else(|| StoreError::UnknownAttribute(name.clone()))
            })
            .collect::<Result<_, _>>()?;
        let nulls = values.iter().filter(|v| v.is_null()).count();
        if nulls == 0 {
            return Ok(Some(values));
        }
        if dep.nullable && nulls == values.len() {
            return Ok(None);
        }
        if dep.nullable {
            return Err(StoreError::PartialNullReference(dep.fk_attrs.clone()));
        }
        Err(StoreError::ReferentialViolation {
            entity: spec.name.clone(),
            target: dep.fk_attrs.join(","),
            key: Self::key_text(&values),
        })
    }

    /// The set of referencable fk tuples of a dependency target.
    fn target_tuples(
        &self,
        dep: &DepSpec,
        stripped: bool,
    ) -> Result<HashSet<Vec<Value>>, QueryError> {
        let expr = if stripped {
            strip_restrictions(&dep.target)
        } else {
            dep.target.clone()
        };
        let rel = eval(&expr, self)?;
        let idx: Vec<usize> = dep
            .fk_attrs
            .iter()
            .map(|name| {
                rel.header
                    .index_of(name)
                    .ok_or_else(|| QueryError::UnknownAttribute(name.clone()))
            })
            .collect::<Result<_, _>>()?;
        Ok(rel
            .rows
            .iter()
            .map(|row| idx.iter().map(|&i| row[i].clone()).collect())
            .collect())
    }

    /// Insert rows atomically. `attr_names` empty means all attributes in
    /// declaration order. Parts can only be inserted through their master.
    pub fn insert(
        &mut self,
        entity: &str,
        attr_names: &[String],
        rows: &[Vec<Value>],
    ) -> Result<usize, StoreError> {
        let backup = self.tables.clone();
        match self.insert_rows(entity, attr_names, rows, false) {
            Ok(n) => {
                self.generation += 1;
                Ok(n)
            }
            Err(e) => {
                self.tables = backup;
                Err(e)
            }
        }
    }

    /// Insert a master together with its part rows in one transaction.
    pub fn insert_master(
        &mut self,
        master: &str,
        master_attrs: &[String],
        master_rows: &[Vec<Value>],
        parts: &[(String, Vec<String>, Vec<Vec<Value>>)],
    ) -> Result<usize, StoreError> {
        let backup = self.tables.clone();
        let result = (|| {
            let spec = self.spec(master)?;
            if spec.master.is_some() {
                return Err(StoreError::PartDirectInsert(master.to_string()));
            }
            let declared_parts: HashSet<String> = self
                .catalog
                .parts_of(master)
                .iter()
                .map(|p| p.name.clone())
                .collect();
            let mut n = self.insert_rows(master, master_attrs, master_rows, false)?;
            for (part, attrs, rows) in parts {
                if !declared_parts.contains(part) {
                    return Err(StoreError::UnknownPart(part.clone()));
                }
                n += self.insert_rows(part, attrs, rows, true)?;
            }
            Ok(n)
        })();
        match result {
            Ok(n) => {
                self.generation += 1;
                Ok(n)
            }
            Err(e) => {
                self.tables = backup;
                Err(e)
            }
        }
    }

    fn insert_rows(
        &mut self,
        entity: &str,
        attr_names: &[String],
        rows: &[Vec<Value>],
        via_master: bool,
    ) -> Result<usize, StoreError> {
        let spec = self.spec(entity)?;
        if spec.master.is_some() && !via_master {
            return Err(StoreError::PartDirectInsert(entity.to_string()));
        }
        let names: Vec<String> = if attr_names.is_empty() {
            spec.attrs.iter().map(|a| a.name.clone()).collect()
        } else {
            attr_names.to_vec()
        };
        // position of each declared attribute in the supplied rows
        let mut positions: Vec<Option<usize>> = vec![None; spec.attrs.len()];
        for (j, name) in names.iter().enumerate() {
            let i = spec
                .attrs
                .iter()
                .position(|a| &a.name == name)
                .ok_or_else(|| StoreError::UnknownAttribute(name.clone()))?;
            positions[i] = Some(j);
        }
        // referencable tuples per dependency, with restrictions in force
        let mut dep_tuples = Vec::new();
        for dep in &spec.deps {
            dep_tuples.push(self.target_tuples(dep, false)?);
        }
        // existing values for key and uniqueness checks
        let table = self.tables.entry(entity.to_string()).or_default();
        let mut pk_seen: HashSet<Vec<Value>> = table
            .rows
            .iter()
            .map(|r| Self::pk_tuple(&spec, r))
            .collect();
        let mut unique_seen: Vec<HashSet<Vec<Value>>> = Vec::new();
        for dep in &spec.deps {
            let mut seen = HashSet::new();
            if dep.unique {
                for r in &table.rows {
                    if let Some(t) = Self::fk_tuple(&spec, dep, r)? {
                        seen.insert(t);
                    }
                }
            }
            unique_seen.push(seen);
        }
        let mut new_rows = Vec::new();
        for row in rows {
            if row.len() != names.len() {
                return Err(StoreError::MissingAttribute(format!(
                    "row has {} values for {} attributes",
                    row.len(),
                    names.len()
                )));
            }
            let mut full = Vec::with_capacity(spec.attrs.len());
            for (i, attr) in spec.attrs.iter().enumerate() {
                let raw = match positions[i] {
                    Some(j) => row[j].clone(),
                    None => match &attr.default {
                        Some(lit) => lit.to_value(),
                        None if attr.nullable => Value::Null,
                        None => return Err(StoreError::MissingAttribute(attr.name.clone())),
                    },
                };
                if raw.is_null() && attr.is_primary {
                    return Err(StoreError::DomainViolation {
                        attr: attr.name.clone(),
                        datatype: attr.datatype.to_string(),
                        value: "null".into(),
                    });
                }
                full.push(conform(&raw, &attr.datatype, &attr.name)?);
            }
            for (dep, (tuples, seen)) in spec
                .deps
                .iter()
                .zip(dep_tuples.iter().zip(unique_seen.iter_mut()))
            {
                let Some(fk) = Self::fk_tuple(&spec, dep, &full)? else {
                    continue; // all-null nullable reference
                };
                if !tuples.contains(&fk) {
                    return Err(StoreError::ReferentialViolation {
                        entity: entity.to_string(),
                        target: crate::lang::printer::print_query(&dep.target),
                        key: Self::key_text(&fk),
                    });
                }
                if dep.unique && !seen.insert(fk.clone()) {
                    return Err(StoreError::UniqueDependencyViolation {
                        entity: entity.to_string(),
                        key: Self::key_text(&fk),
                    });
                }
            }
            let pk = Self::pk_tuple(&spec, &full);
            if !pk_seen.insert(pk.clone()) {
                return Err(StoreError::DuplicateKey {
                    entity: entity.to_string(),
                    key: Self::key_text(&pk),
                });
            }
            new_rows.push(full);
        }
        let n = new_rows.len();
        self.tables
            .entry(entity.to_string())
            .or_default()
            .rows
            .extend(new_rows);
        Ok(n)
    }

    /// Delete the elements of `entity` matching `cond`, cascading down the
    /// dependency chains. Returns removed-row counts per entity set.
    pub fn delete(
        &mut self,
        entity: &str,
        cond: &Condition,
    ) -> Result<DeleteCounts, StoreError> {
        let spec = self.spec(entity)?;
        if spec.master.is_some() {
            return Err(StoreError::PartDirectDelete(entity.to_string()));
        }
        let backup = self.tables.clone();
        let result = self.delete_cascade(&spec, cond);
        match result {
            Ok(counts) => {
                self.generation += 1;
                Ok(counts)
            }
            Err(e) => {
                self.tables = backup;
                Err(e)
            }
        }
    }

    fn delete_cascade(
        &mut self,
        spec: &EntitySpec,
        cond: &Condition,
    ) -> Result<DeleteCounts, StoreError> {
        let header = spec.header();
        let rows = self.tables.get(&spec.name).cloned().unwrap_or_default().rows;
        let mut keep = Vec::new();
        let mut removed = 0usize;
        for row in rows {
            if eval_condition_on_row(cond, &header, &row, self)? {
                removed += 1;
            } else {
                keep.push(row);
            }
        }
        self.tables.insert(spec.name.clone(), Table { rows: keep });
        let mut counts = DeleteCounts::new();
        counts.insert(spec.name.clone(), removed);
        // One pass in declaration (topological) order: dependencies only
        // reference earlier entity sets, whose row sets are final by the
        // time we reach their dependents.
        let order: Vec<EntitySpec> = self.catalog.entities().to_vec();
        for e in &order {
            let mut dropped = 0usize;
            for dep in &e.deps {
                // restrictions never shield dependents from a cascade
                let tuples = self.target_tuples(dep, true)?;
                let table = self.tables.get(&e.name).cloned().unwrap_or_default();
                let mut keep = Vec::new();
                for row in table.rows {
                    match Self::fk_tuple(e, dep, &row)? {
                        Some(fk) if !tuples.contains(&fk) => dropped += 1,
                        _ => keep.push(row),
                    }
                }
                self.tables.insert(e.name.clone(), Table { rows: keep });
            }
            if dropped > 0 {
                *counts.entry(e.name.clone()).or_insert(0) += dropped;
            }
        }
        counts.retain(|_, n| *n > 0);
        Ok(counts)
    }

    /// Cautious update: assignments may touch only secondary attributes
    /// that are not foreign keys of any dependency.
    pub fn update(
        &mut self,
        entity: &str,
        cond: &Condition,
        assignments: &[(String, Value)],
    ) -> Result<usize, StoreError> {
        let spec = self.spec(entity)?;
        let mut updates = Vec::new();
        for (name, value) in assignments {
            let attr = spec
                .attr(name)
                .ok_or_else(|| StoreError::UnknownAttribute(name.clone()))?;
            if attr.is_primary {
                return Err(StoreError::PrimaryKeyUpdate(name.clone()));
            }
            if attr.from_dependency {
                return Err(StoreError::ForeignKeyUpdate(name.clone()));
            }
            let i = spec.attrs.iter().position(|a| &a.name == name).unwrap();
            let conformed = if value.is_null() {
                Value::Null
            } else {
                conform(value, &attr.datatype, name)?
            };
            updates.push((i, conformed));
        }
        let header = spec.header();
        let rows = self.tables.get(entity).cloned().unwrap_or_default().rows;
        let mut matched = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            if eval_condition_on_row(cond, &header, row, self)? {
                matched.push(i);
            }
        }
        let table = self.tables.get_mut(entity).unwrap();
        for &i in &matched {
            for (j, v) in &updates {
                table.rows[i][*j] = v.clone();
            }
        }
        if !matched.is_empty() {
            self.generation += 1;
        }
        Ok(matched.len())
    }

    /// Every violation of the store invariants: primary key uniqueness,
    /// domain conformance, referential closure (restrictions stripped),
    /// unique-dependency constraints, and null-reference consistency.
    pub fn audit(&self) -> Vec<String> {
        let mut violations = Vec::new();
        for spec in self.catalog.entities() {
            let rows = match self.tables.get(&spec.name) {
                Some(t) => &t.rows,
                None => continue,
            };
            let mut pk_seen = HashSet::new();
            for row in rows {
                let pk = Self::pk_tuple(spec, row);
                if !pk_seen.insert(pk.clone()) {
                    violations.push(format!(
                        "{}: duplicate primary key ({})",
                        spec.name,
                        Self::key_text(&pk)
                    ));
                }
                for (attr, value) in spec.attrs.iter().zip(row) {
                    if value.is_null() {
                        if attr.is_primary {
                            violations
                                .push(format!("{}: null primary key {}", spec.name, attr.name));
                        }
                        continue;
                    }
                    if conform(value, &attr.datatype, &attr.name).is_err() {
                        violations.push(format!(
                            "{}: value {} violates {} {}",
                            spec.name, value, attr.name, attr.datatype
                        ));
                    }
                }
            }
            for dep in &spec.deps {
                let tuples = match self.target_tuples(dep, true) {
                    Ok(t) => t,
                    Err(e) => {
                        violations.push(format!("{}: dependency target error: {e}", spec.name));
                        continue;
                    }
                };
                let mut referenced = HashSet::new();
                for row in rows {
                    match Self::fk_tuple(spec, dep, row) {
                        Ok(Some(fk)) => {
                            if !tuples.contains(&fk) {
                                violations.push(format!(
                                    "{}: dangling reference ({}) via ({})",
                                    spec.name,
                                    Self::key_text(&fk),
                                    dep.fk_attrs.join(",")
                                ));
                            }
                            if dep.unique && !referenced.insert(fk.clone()) {
                                violations.push(format!(
                                    "{}: unique dependency violated for ({})",
                                    spec.name,
                                    Self::key_text(&fk)
                                ));
                            }
                        }
                        Ok(None) => {}
                        Err(e) => violations.push(format!("{}: {e}", spec.name)),
                    }
                }
            }
        }
        violations
    }

    /// Execute a parsed insert/delete/update statement.
    pub fn run_manipulation(&mut self, m: &Manipulation) -> Result<String, StoreError> {
        match m {
            Manipulation::Insert {
                entity,
                attrs,
                rows,
            } => {
                let values: Vec<Vec<Value>> = rows
                    .iter()
                    .map(|r| r.iter().map(Literal::to_value).collect())
                    .collect();
                let n = self.insert(entity, attrs, &values)?;
                Ok(format!("inserted {n} into {entity}"))
            }
            Manipulation::Delete { entity, cond } => {
                let counts = self.delete(entity, cond)?;
                let total: usize = counts.values().sum();
                let detail: Vec<String> =
                    counts.iter().map(|(e, n)| format!("{e}: {n}")).collect();
                Ok(format!("deleted {total} ({})", detail.join(", ")))
            }
            Manipulation::Update {
                entity,
                cond,
                assignments,
            } => {
                let values: Vec<(String, Value)> = assignments
                    .iter()
                    .map(|(k, v)| (k.clone(), v.to_value()))
                    .collect();
                let n = self.update(entity, cond, &values)?;
                Ok(format!("updated {n} in {entity}"))
            }
            Manipulation::Populate { entity, .. } => Err(StoreError::UnknownEntity(format!(
                "populate {entity} must run through the populate driver"
            ))),
        }
    }

    /// Corrupt-on-purpose hook for negative tests: drop one row without any
    /// cascade or checks.
    #[doc(hidden)]
    pub fn remove_row_unchecked(&mut self, entity: &str, index: usize) {
        if let Some(t) = self.tables.get_mut(entity) {
            if index < t.rows.len() {
                t.rows.remove(index);
            }
        }
    }
}

impl HeaderSource for Store {
    fn base_header(&self, name: &str) -> Result<RelationHeader, QueryError> {
        self.catalog.base_header(name)
    }
}

impl RelationSource for Store {
    fn base_relation(&self, name: &str) -> Result<Relation, QueryError> {
        let header = self.catalog.base_header(name)?;
        let rows = self.tables.get(name).map_or_else(Vec::new, |t| t.rows.clone());
        Ok(Relation { header, rows })
    }
}

/// Persistence errors for `dump`/`load`.
#[derive(Debug, Error)]
pub enum PersistError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("corrupt store dump: {0}")]
    Corrupt(String),
    #[error("loaded store fails audit: {0:?}")]
    Audit(Vec<String>),
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    catalog: Catalog,
    generation: u64,
    entities: Vec<String>,
}

const NULL_TOKEN: &str = "\\N";

fn value_to_csv(v: &Value) -> String {
    match v {
        Value::Null => NULL_TOKEN.to_string(),
        other => other.to_string(),
    }
}

fn value_from_csv(s: &str, datatype: &Datatype, attr: &str) -> Result<Value, PersistError> {
    if s == NULL_TOKEN {
        return Ok(Value::Null);
    }
    let raw = match datatype {
        Datatype::Int | Datatype::IntUnsigned | Datatype::Year => Value::Int(
            s.parse::<i64>()
                .map_err(|_| PersistError::Corrupt(format!("bad int `{s}` for {attr}")))?,
        ),
        Datatype::Double | Datatype::Decimal(..) => Value::Double(
            s.parse::<f64>()
                .map_err(|_| PersistError::Corrupt(format!("bad number `{s}` for {attr}")))?,
        ),
        _ => Value::Str(s.to_string()),
    };
    conform(&raw, datatype, attr).map_err(|e| PersistError::Corrupt(e.to_string()))
}

impl Store {
    /// Write the store as a directory: `manifest.json` plus one CSV per
    /// entity set.
    pub fn dump(&self, dir: &Path) -> Result<(), PersistError> {
        std::fs::create_dir_all(dir)?;
        let manifest = Manifest {
            catalog: self.catalog.clone(),
            generation: self.generation,
            entities: self.catalog.entities().iter().map(|e| e.name.clone()).collect(),
        };
        std::fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(&manifest)?,
        )?;
        for spec in self.catalog.entities() {
            let file = dir.join(format!("{}.csv", spec.name.replace('.', "__")));
            let mut w = csv::Writer::from_path(&file)?;
            w.write_record(spec.attrs.iter().map(|a| a.name.as_str()))?;
            if let Some(t) = self.tables.get(&spec.name) {
                for row in &t.rows {
                    w.write_record(row.iter().map(value_to_csv))?;
                }
            }
            w.flush()?;
        }
        Ok(())
    }

    /// Load a store previously written by `dump`; the loaded store is
    /// re-audited and rejected when any invariant fails.
    pub fn load(dir: &Path) -> Result<Store, PersistError> {
        let manifest: Manifest =
            serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
        let mut catalog = manifest.catalog;
        catalog.reindex();
        let mut store = Store {
            catalog,
            tables: BTreeMap::new(),
            generation: manifest.generation,
        };
        for name in &manifest.entities {
            let spec = store
                .catalog
                .get(name)
                .cloned()
                .ok_or_else(|| PersistError::Corrupt(format!("unknown entity `{name}`")))?;
            let file = dir.join(format!("{}.csv", name.replace('.', "__")));
            let mut r = csv::Reader::from_path(&file)?;
            let headers: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
            let expected: Vec<String> = spec.attrs.iter().map(|a| a.name.clone()).collect();
            if headers != expected {
                return Err(PersistError::Corrupt(format!(
                    "column mismatch in {name}: {headers:?} vs {expected:?}"
                )));
            }
            let mut rows = Vec::new();
            for record in r.records() {
                let record = record?;
                let row: Vec<Value> = spec
                    .attrs
                    .iter()
                    .zip(record.iter())
                    .map(|(a, s)| value_from_csv(s, &a.datatype, &a.name))
                    .collect::<Result<_, _>>()?;
                rows.push(row);
            }
            store.tables.insert(name.clone(), Table { rows });
        }
        let violations = store.audit();
        if !violations.is_empty() {
            return Err(PersistError::Audit(violations));
        }
        Ok(store)
    }
}
