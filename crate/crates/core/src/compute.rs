//! Computed entity sets: enumeration of the primary dependency domain and
//! a populate driver that calls registered make functions for missing keys.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::algebra::{eval, eval_scalar};
use crate::error::ComputeError;
use crate::lang::ast::{Condition, QueryExpr, ScalarExpr};
use crate::store::Store;
use crate::value::Value;

/// An attribute-name → value mapping; keys drawn from the primary
/// dependency domain and rows returned by make functions use this form.
pub type Row = BTreeMap<String, Value>;

/// Rows produced by one make call: elements of the entity set itself and,
/// when the entity is a master, rows for its parts.
#[derive(Debug, Clone, Default)]
pub struct MakeResult {
    pub rows: Vec<Row>,
    pub parts: Vec<(String, Vec<Row>)>,
}

pub type MakeFn = Box<dyn Fn(&Row) -> Result<MakeResult, String> + Send + Sync>;

/// Registered make functions, keyed by entity-set name.
#[derive(Default)]
pub struct MakeRegistry {
    makes: HashMap<String, MakeFn>,
}

impl MakeRegistry {
    pub fn new() -> Self {
        MakeRegistry::default()
    }

    pub fn register(
        &mut self,
        entity: &str,
        make: impl Fn(&Row) -> Result<MakeResult, String> + Send + Sync + 'static,
    ) {
        self.makes.insert(entity.to_string(), Box::new(make));
    }

    pub fn get(&self, entity: &str) -> Option<&MakeFn> {
        self.makes.get(entity)
    }
}

/// Outcome of one populate run.
#[derive(Debug, Default)]
pub struct PopulateReport {
    /// Keys whose make calls committed.
    pub made: usize,
    /// Keys whose make call or insert failed; failures never abort the
    /// remaining keys.
    pub errored: Vec<(Row, String)>,
}

/// The missing portion of the primary dependency domain: (domain attribute
/// names, keys not yet present in the entity set).
fn missing_keys(store: &Store, entity: &str) -> Result<(Vec<String>, Vec<Vec<Value>>), ComputeError> {
    let catalog = store.catalog();
    let (attrs, mut domain_rows) = match catalog.primary_dependency_domain(entity) {
        Some(expr) => {
            let rel = eval(&expr, store)?;
            let attrs: Vec<String> =
                rel.header.attrs.iter().map(|a| a.name.clone()).collect();
            (attrs, rel.sorted_rows())
        }
        // no primary dependencies: the domain is the singleton empty tuple
        None => (Vec::new(), vec![Vec::new()]),
    };
    let spec = catalog
        .get(entity)
        .ok_or_else(|| crate::error::QueryError::UnknownReference(entity.to_string()))?;
    let idx: Vec<usize> = attrs
        .iter()
        .map(|a| {
            spec.attrs
                .iter()
                .position(|x| &x.name == a)
                .ok_or_else(|| crate::error::QueryError::UnknownAttribute(a.clone()))
        })
        .collect::<Result<_, _>>()?;
    let existing: HashSet<Vec<Value>> = {
        let rel = store.base_rows(entity)?;
        rel.iter()
            .map(|row| idx.iter().map(|&i| row[i].clone()).collect())
            .collect()
    };
    domain_rows.retain(|k| !existing.contains(k));
    Ok((attrs, domain_rows))
}

/// Populate `entity` by calling its registered make function for every key
/// of the primary dependency domain that is not yet present.
pub fn populate(
    store: &mut Store,
    entity: &str,
    registry: &MakeRegistry,
) -> Result<PopulateReport, ComputeError> {
    let make = registry
        .get(entity)
        .ok_or_else(|| ComputeError::NoMakeRegistered(entity.to_string()))?;
    let (attrs, keys) = missing_keys(store, entity)?;
    let mut report = PopulateReport::default();
    for key_values in keys {
        let key: Row = attrs.iter().cloned().zip(key_values.clone()).collect();
        let outcome = make(&key)
            .map_err(ComputeError::from_make)
            .and_then(|result| commit_make(store, entity, &key, result));
        match outcome {
            Ok(()) => report.made += 1,
            Err(e) => report.errored.push((key, e.to_string())),
        }
    }
    Ok(report)
}

impl ComputeError {
    fn from_make(message: String) -> ComputeError {
        ComputeError::Store(crate::error::StoreError::MissingAttribute(message))
    }
}

fn commit_make(
    store: &mut Store,
    entity: &str,
    key: &Row,
    result: MakeResult,
) -> Result<(), ComputeError> {
    // every produced element must sit at the key it was made for
    let mut rows = Vec::new();
    for mut row in result.rows {
        for (k, v) in key {
            match row.get(k) {
                None => {
                    row.insert(k.clone(), v.clone());
                }
                Some(existing) if existing == v => {}
                Some(other) => {
                    return Err(ComputeError::Store(
                        crate::error::StoreError::DomainViolation {
                            attr: k.clone(),
                            datatype: "make contract".into(),
                            value: format!("{other} (expected {v})"),
                        },
                    ));
                }
            }
        }
        rows.push(row);
    }
    let (names, values) = tabulate(&rows)?;
    let has_parts = !store.catalog().parts_of(entity).is_empty();
    if has_parts || !result.parts.is_empty() {
        let mut parts = Vec::new();
        for (part, part_rows) in &result.parts {
            let (pnames, pvalues) = tabulate(part_rows)?;
            parts.push((part.clone(), pnames, pvalues));
        }
        store.insert_master(entity, &names, &values, &parts)?;
    } else {
        store.insert(entity, &names, &values)?;
    }
    Ok(())
}

/// Convert attribute-map rows into a uniform (names, value matrix) pair.
fn tabulate(rows: &[Row]) -> Result<(Vec<String>, Vec<Vec<Value>>), ComputeError> {
    let Some(first) = rows.first() else {
        return Ok((Vec::new(), Vec::new()));
    };
    let names: Vec<String> = first.keys().cloned().collect();
    let mut values = Vec::new();
    for row in rows {
        if row.len() != names.len() || !names.iter().all(|n| row.contains_key(n)) {
            return Err(ComputeError::Store(
                crate::error::StoreError::MissingAttribute(
                    "make returned rows with inconsistent attributes".into(),
                ),
            ));
        }
        values.push(names.iter().map(|n| row[n].clone()).collect());
    }
    Ok((names, values))
}

/// Populate with computed secondary attributes given as expressions over
/// the join of the full primary dependency targets.
pub fn populate_declarative(
    store: &mut Store,
    entity: &str,
    items: &[(String, ScalarExpr)],
) -> Result<PopulateReport, ComputeError> {
    let spec = store
        .catalog()
        .get(entity)
        .ok_or_else(|| crate::error::QueryError::UnknownReference(entity.to_string()))?
        .clone();
    if spec
        .attrs
        .iter()
        .any(|a| a.is_primary && !a.from_dependency)
    {
        return Err(ComputeError::DeclarativeUnsupported(
            entity.to_string(),
            "distinguishing primary attributes require a make function".into(),
        ));
    }
    if !store.catalog().parts_of(entity).is_empty() {
        return Err(ComputeError::DeclarativeUnsupported(
            entity.to_string(),
            "master-part population requires a make function".into(),
        ));
    }
    // context: the full (unprojected) join of the primary dependency
    // targets, carrying their secondary attributes for the expressions
    let mut context: Option<QueryExpr> = None;
    for dep in spec.deps.iter().filter(|d| d.in_primary) {
        let target = dep.target.clone();
        context = Some(match context {
            None => target,
            Some(e) => QueryExpr::Join(Box::new(e), Box::new(target)),
        });
    }
    let Some(context) = context else {
        return Err(ComputeError::DeclarativeUnsupported(
            entity.to_string(),
            "no primary dependencies to enumerate".into(),
        ));
    };
    let (attrs, keys) = missing_keys(store, entity)?;
    let mut report = PopulateReport::default();
    for key_values in keys {
        let key: Row = attrs.iter().cloned().zip(key_values.clone()).collect();
        let outcome = make_declarative(store, &context, &key, items)
            .and_then(|result| commit_make(store, entity, &key, result));
        match outcome {
            Ok(()) => report.made += 1,
            Err(e) => report.errored.push((key, e.to_string())),
        }
    }
    Ok(report)
}

fn make_declarative(
    store: &Store,
    context: &QueryExpr,
    key: &Row,
    items: &[(String, ScalarExpr)],
) -> Result<MakeResult, ComputeError> {
    let mapping: Vec<(String, crate::lang::ast::Literal)> = key
        .iter()
        .map(|(k, v)| (k.clone(), value_literal(v)))
        .collect();
    let restricted = QueryExpr::Restrict {
        input: Box::new(context.clone()),
        cond: Box::new(Condition::Mapping(mapping)),
        exclude: false,
    };
    let rel = eval(&restricted, store)?;
    let mut row: Row = key.clone();
    let source = rel.rows.first();
    for (name, expr) in items {
        let value = match source {
            Some(r) => eval_scalar(expr, &rel.header, r),
            None => Value::Null,
        };
        row.insert(name.clone(), value);
    }
    Ok(MakeResult {
        rows: vec![row],
        parts: Vec::new(),
    })
}

fn value_literal(v: &Value) -> crate::lang::ast::Literal {
    use crate::lang::ast::Literal;
    match v {
        Value::Null => Literal::Null,
        Value::Int(i) => Literal::Int(*i),
        Value::Double(d) => Literal::Double(*d),
        Value::Decimal { .. } => Literal::Double(v.as_f64().unwrap()),
        Value::Str(s) => Literal::Str(s.clone()),
    }
}
