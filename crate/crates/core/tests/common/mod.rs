//! Shared test support: fixture loading and an independent brute-force
//! evaluator used as an oracle for the query engine.
//!
//! The oracle represents rows as attribute-name maps and implements every
//! operator directly from its set-theoretic definition with nested loops.
//! It shares only the static header analysis (attribute names, primary
//! keys, homologous-namesake matching) with the engine; all row-level
//! semantics are written independently.

#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::BTreeMap;

use djengine::algebra::{analyze, Relation, RelationHeader};
use djengine::error::QueryError;
use djengine::lang::ast::{
    BinOp, CmpOp, Condition, Literal, ProjItem, QueryExpr, ScalarExpr, Statement, AGGR_FNS,
};
use djengine::lang::parser::{parse_query, parse_script};
use djengine::value::Value;
use djengine::Store;

pub const UNIVERSITY: &str = include_str!("../data/university.dj");
pub const ORDER_SCHEMA: &str = include_str!("../data/order.dj");

/// Build a store by running every declaration and manipulation in `text`.
pub fn load_store(text: &str) -> Store {
    let mut store = Store::new();
    for stmt in parse_script(text).expect("fixture parses") {
        match stmt {
            Statement::Decl(d) => store.declare(&d).expect("fixture declares"),
            Statement::Manip(m) => {
                store.run_manipulation(&m).expect("fixture manipulation");
            }
            _ => panic!("fixture contains unexpected statement"),
        }
    }
    assert!(store.audit().is_empty(), "fixture store fails audit");
    store
}

pub fn university_store() -> Store {
    load_store(UNIVERSITY)
}

pub fn parse(q: &str) -> QueryExpr {
    parse_query(q).expect("query parses")
}

// ---------------------------------------------------------------------------
// Oracle evaluator
// ---------------------------------------------------------------------------

/// Oracle row: attribute name → value.
pub type ORow = BTreeMap<String, Value>;

fn value_eq(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Null, Value::Null) => true,
        (Value::Null, _) | (_, Value::Null) => false,
        _ => a.compare(b) == Some(Ordering::Equal),
    }
}

fn row_eq(a: &ORow, b: &ORow) -> bool {
    a.len() == b.len()
        && a.iter()
            .all(|(k, v)| b.get(k).map(|w| value_eq(v, w)).unwrap_or(false))
}

fn dedup_rows(rows: Vec<ORow>) -> Vec<ORow> {
    let mut out: Vec<ORow> = Vec::new();
    for r in rows {
        if !out.iter().any(|x| row_eq(x, &r)) {
            out.push(r);
        }
    }
    out
}

fn base_rows(store: &Store, name: &str) -> Result<Vec<ORow>, QueryError> {
    let spec = store
        .catalog()
        .get(name)
        .ok_or_else(|| QueryError::UnknownReference(name.to_string()))?;
    let names: Vec<String> = spec.attrs.iter().map(|a| a.name.clone()).collect();
    let rows = store.base_rows(name)?;
    Ok(rows
        .into_iter()
        .map(|r| names.iter().cloned().zip(r).collect())
        .collect())
}

fn header_of(store: &Store, expr: &QueryExpr) -> Result<RelationHeader, QueryError> {
    analyze(expr, store)
}

/// Names matched by a binary operator: namesakes whose lineages are
/// homologous (universal-set attributes match any namesake).
fn match_names(store: &Store, a: &QueryExpr, b: &QueryExpr) -> Result<Vec<String>, QueryError> {
    let ha = header_of(store, a)?;
    let hb = header_of(store, b)?;
    Ok(ha.homologous_namesakes(&hb))
}

/// The distinct projections of `attrs` over `rows`, skipping any row with
/// a null among them. An empty attribute list denotes the phantom-only
/// universal set, which always holds exactly one (empty) element.
fn materialize(attrs: &[String], rows: &[ORow]) -> Vec<ORow> {
    if attrs.is_empty() {
        return vec![ORow::new()];
    }
    let projected: Vec<ORow> = rows
        .iter()
        .filter(|r| attrs.iter().all(|a| r.get(a).map(|v| !v.is_null()).unwrap_or(false)))
        .map(|r| attrs.iter().map(|a| (a.clone(), r[a].clone())).collect())
        .collect();
    dedup_rows(projected)
}

pub fn oracle_eval(expr: &QueryExpr, store: &Store) -> Result<Vec<ORow>, QueryError> {
    match expr {
        QueryExpr::Base(name) => base_rows(store, name),
        QueryExpr::Universal(attrs) => {
            if attrs.is_empty() {
                Ok(vec![ORow::new()])
            } else {
                Err(QueryError::UniversalNotMaterializable)
            }
        }
        QueryExpr::Restrict {
            input,
            cond,
            exclude,
        } => {
            if let QueryExpr::Universal(attrs) = input.as_ref() {
                if *exclude {
                    return Err(QueryError::UnsupportedUniversalRestriction);
                }
                let Condition::Subquery(sub) = cond.as_ref() else {
                    return Err(QueryError::UnsupportedUniversalRestriction);
                };
                let sub_rows = oracle_eval(sub, store)?;
                return Ok(materialize(attrs, &sub_rows));
            }
            let rows = oracle_eval(input, store)?;
            let header = header_of(store, input)?;
            let mut out = Vec::new();
            for r in rows {
                let hit = oracle_cond(cond, &r, &header, store)?;
                if hit != *exclude {
                    out.push(r);
                }
            }
            Ok(out)
        }
        QueryExpr::Join(a, b) => {
            // a universal operand takes its content from the concrete side
            if let QueryExpr::Universal(attrs) = a.as_ref() {
                let rows = oracle_eval(b, store)?;
                let uni = materialize(attrs, &rows);
                return Ok(join_rows(&uni, &rows, attrs));
            }
            if let QueryExpr::Universal(attrs) = b.as_ref() {
                let rows = oracle_eval(a, store)?;
                let uni = materialize(attrs, &rows);
                return Ok(join_rows(&rows, &uni, attrs));
            }
            let shared = match_names(store, a, b)?;
            let ra = oracle_eval(a, store)?;
            let rb = oracle_eval(b, store)?;
            Ok(join_rows(&ra, &rb, &shared))
        }
        QueryExpr::Project {
            input,
            items,
            ellipsis,
        } => {
            let rows = oracle_eval(input, store)?;
            let out_header = header_of(store, expr)?;
            let mut out = Vec::new();
            for r in &rows {
                out.push(project_row(r, items, &out_header)?);
            }
            let _ = ellipsis;
            Ok(dedup_rows(out))
        }
        QueryExpr::Aggregate {
            input,
            group,
            items,
        } => {
            let grows = oracle_eval(group, store)?;
            let (lrows, shared) = if let QueryExpr::Universal(attrs) = input.as_ref() {
                // X.aggr(A, ...) with universal X means (X & A).aggr(A, ...)
                (materialize(attrs, &grows), attrs.clone())
            } else {
                (oracle_eval(input, store)?, match_names(store, input, group)?)
            };
            let out_header = header_of(store, expr)?;
            let mut out = Vec::new();
            for l in &lrows {
                let matched: Vec<&ORow> = grows
                    .iter()
                    .filter(|g| shared.iter().all(|n| value_eq(&l[n], &g[n])))
                    .collect();
                out.push(aggregate_row(l, &matched, items, &out_header)?);
            }
            Ok(out)
        }
        QueryExpr::Union(a, b) => {
            let mut rows = oracle_eval(a, store)?;
            rows.extend(oracle_eval(b, store)?);
            Ok(dedup_rows(rows))
        }
    }
}

fn join_rows(a: &[ORow], b: &[ORow], shared: &[String]) -> Vec<ORow> {
    let mut out = Vec::new();
    for x in a {
        for y in b {
            let matches = shared
                .iter()
                .all(|n| !x[n].is_null() && !y[n].is_null() && value_eq(&x[n], &y[n]));
            if matches {
                let mut merged = x.clone();
                for (k, v) in y {
                    merged.entry(k.clone()).or_insert_with(|| v.clone());
                }
                out.push(merged);
            }
        }
    }
    dedup_rows(out)
}

/// Map one input row through projection items; output attributes and their
/// order come from the analyzed output header.
fn project_row(
    row: &ORow,
    items: &[ProjItem],
    out_header: &RelationHeader,
) -> Result<ORow, QueryError> {
    let mut out = ORow::new();
    for attr in &out_header.attrs {
        let value = if let Some(ProjItem::Rename { old, .. }) = items.iter().find(
            |i| matches!(i, ProjItem::Rename { new, .. } if new == &attr.name),
        ) {
            row[old].clone()
        } else if let Some(ProjItem::Compute { expr, .. }) = items.iter().find(
            |i| matches!(i, ProjItem::Compute { name, .. } if name == &attr.name),
        ) {
            oracle_scalar(expr, row)?
        } else {
            row[&attr.name].clone()
        };
        out.insert(attr.name.clone(), value);
    }
    Ok(out)
}

fn aggregate_row(
    left: &ORow,
    matched: &[&ORow],
    items: &[ProjItem],
    out_header: &RelationHeader,
) -> Result<ORow, QueryError> {
    let mut out = ORow::new();
    for attr in &out_header.attrs {
        let value = if let Some(ProjItem::Rename { old, .. }) = items.iter().find(
            |i| matches!(i, ProjItem::Rename { new, .. } if new == &attr.name),
        ) {
            left[old].clone()
        } else if let Some(ProjItem::Compute { expr, .. }) = items.iter().find(
            |i| matches!(i, ProjItem::Compute { name, .. } if name == &attr.name),
        ) {
            oracle_aggr_scalar(expr, left, matched)?
        } else {
            left[&attr.name].clone()
        };
        out.insert(attr.name.clone(), value);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Scalar and aggregate expression evaluation
// ---------------------------------------------------------------------------

fn oracle_scalar(expr: &ScalarExpr, row: &ORow) -> Result<Value, QueryError> {
    match expr {
        ScalarExpr::Attr(a) => Ok(row
            .get(a)
            .cloned()
            .ok_or_else(|| QueryError::UnknownAttribute(a.clone()))?),
        ScalarExpr::Lit(l) => Ok(l.to_value()),
        ScalarExpr::Binary { op, left, right } => {
            let a = oracle_scalar(left, row)?;
            let b = oracle_scalar(right, row)?;
            Ok(arith(*op, &a, &b))
        }
        ScalarExpr::Call { name, .. } => Err(QueryError::AggrFnOutsideAggregate(name.clone())),
    }
}

/// Arithmetic with the language's null and numeric rules: nulls propagate,
/// integer arithmetic stays exact except division, string `+` concatenates,
/// and division by zero yields null.
fn arith(op: BinOp, a: &Value, b: &Value) -> Value {
    if a.is_null() || b.is_null() {
        return Value::Null;
    }
    if let (Value::Str(x), Value::Str(y)) = (a, b) {
        if op == BinOp::Add {
            return Value::Str(format!("{x}{y}"));
        }
    }
    if let (Value::Int(x), Value::Int(y)) = (a, b) {
        match op {
            BinOp::Add => return Value::Int(x + y),
            BinOp::Sub => return Value::Int(x - y),
            BinOp::Mul => return Value::Int(x * y),
            BinOp::Div => {}
        }
    }
    let (Some(x), Some(y)) = (a.as_f64(), b.as_f64()) else {
        return Value::Null;
    };
    match op {
        BinOp::Add => Value::Double(x + y),
        BinOp::Sub => Value::Double(x - y),
        BinOp::Mul => Value::Double(x * y),
        BinOp::Div => {
            if y == 0.0 {
                Value::Null
            } else {
                Value::Double(x / y)
            }
        }
    }
}

/// Evaluate an aggr item expression: references inside aggregation calls
/// range over the matched group; references outside them over the left row.
fn oracle_aggr_scalar(
    expr: &ScalarExpr,
    left: &ORow,
    matched: &[&ORow],
) -> Result<Value, QueryError> {
    match expr {
        ScalarExpr::Attr(_) | ScalarExpr::Lit(_) => oracle_scalar(expr, left),
        ScalarExpr::Binary { op, left: l, right: r } => {
            let a = oracle_aggr_scalar(l, left, matched)?;
            let b = oracle_aggr_scalar(r, left, matched)?;
            Ok(arith(*op, &a, &b))
        }
        ScalarExpr::Call { name, args } => {
            if !AGGR_FNS.contains(&name.as_str()) {
                return Err(QueryError::UnknownFunction(name.clone()));
            }
            if name == "count" && args.is_empty() {
                return Ok(Value::Int(matched.len() as i64));
            }
            let arg = args
                .first()
                .ok_or_else(|| QueryError::TypeMismatch(format!("{name}() needs an argument")))?;
            let mut values = Vec::new();
            for g in matched {
                let v = oracle_scalar(arg, g)?;
                if !v.is_null() {
                    values.push(v);
                }
            }
            Ok(oracle_aggr_fn(name, &values, args.get(1)))
        }
    }
}

fn oracle_aggr_fn(name: &str, values: &[Value], extra: Option<&ScalarExpr>) -> Value {
    if name == "count" {
        return Value::Int(values.len() as i64);
    }
    if values.is_empty() {
        return Value::Null;
    }
    match name {
        "min" => values
            .iter()
            .cloned()
            .min_by(|a, b| a.total_order(b))
            .unwrap(),
        "max" => values
            .iter()
            .cloned()
            .max_by(|a, b| a.total_order(b))
            .unwrap(),
        "sum" => {
            if values.iter().all(|v| matches!(v, Value::Int(_))) {
                Value::Int(
                    values
                        .iter()
                        .map(|v| match v {
                            Value::Int(i) => *i,
                            _ => unreachable!(),
                        })
                        .sum(),
                )
            } else {
                Value::Double(values.iter().filter_map(Value::as_f64).sum())
            }
        }
        _ => {
            let mut nums: Vec<f64> = values.iter().filter_map(Value::as_f64).collect();
            if nums.is_empty() {
                return Value::Null;
            }
            let n = nums.len() as f64;
            match name {
                "avg" => Value::Double(nums.iter().sum::<f64>() / n),
                "var" | "stddev" => {
                    let mean = nums.iter().sum::<f64>() / n;
                    let var = nums.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
                    if name == "var" {
                        Value::Double(var)
                    } else {
                        Value::Double(var.sqrt())
                    }
                }
                "median" | "percentile" => {
                    let p = match name {
                        "median" => 0.5,
                        _ => match extra {
                            Some(ScalarExpr::Lit(Literal::Int(i))) => *i as f64 / 100.0,
                            Some(ScalarExpr::Lit(Literal::Double(d))) => {
                                if *d > 1.0 {
                                    *d / 100.0
                                } else {
                                    *d
                                }
                            }
                            _ => return Value::Null,
                        },
                    };
                    nums.sort_by(f64::total_cmp);
                    let rank = p.clamp(0.0, 1.0) * (nums.len() - 1) as f64;
                    let lo = rank.floor() as usize;
                    let hi = rank.ceil() as usize;
                    Value::Double(nums[lo] + (nums[hi] - nums[lo]) * (rank - lo as f64))
                }
                _ => Value::Null,
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Condition evaluation
// ---------------------------------------------------------------------------

fn oracle_cond(
    cond: &Condition,
    row: &ORow,
    header: &RelationHeader,
    store: &Store,
) -> Result<bool, QueryError> {
    match cond {
        Condition::Cmp { left, op, right } => {
            let l = oracle_scalar(left, row)?;
            let r = oracle_scalar(right, row)?;
            Ok(match l.compare(&r) {
                None => false,
                Some(ord) => match op {
                    CmpOp::Eq => ord == Ordering::Equal,
                    CmpOp::Ne => ord != Ordering::Equal,
                    CmpOp::Lt => ord == Ordering::Less,
                    CmpOp::Le => ord != Ordering::Greater,
                    CmpOp::Gt => ord == Ordering::Greater,
                    CmpOp::Ge => ord != Ordering::Less,
                },
            })
        }
        Condition::In { left, list } => {
            let l = oracle_scalar(left, row)?;
            Ok(list.iter().any(|lit| lit_matches(&l, lit)))
        }
        Condition::Mapping(pairs) => Ok(pairs
            .iter()
            .filter(|(k, _)| header.find(k).is_some())
            .all(|(k, lit)| lit_matches(&row[k], lit))),
        Condition::OrList(cs) => {
            for c in cs {
                if oracle_cond(c, row, header, store)? {
                    return Ok(true);
                }
            }
            Ok(false)
        }
        Condition::AndFn(cs) => {
            for c in cs {
                if !oracle_cond(c, row, header, store)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        Condition::NotFn(c) => Ok(!oracle_cond(c, row, header, store)?),
        Condition::Subquery(sub) => {
            let sub_rows = oracle_eval(sub, store)?;
            let sub_header = header_of(store, sub)?;
            let shared = header.homologous_namesakes(&sub_header);
            if shared.is_empty() {
                // phantom-only matching: true when the subquery is nonempty
                return Ok(!sub_rows.is_empty());
            }
            Ok(sub_rows.iter().any(|y| {
                shared
                    .iter()
                    .all(|n| !row[n].is_null() && !y[n].is_null() && value_eq(&row[n], &y[n]))
            }))
        }
    }
}

fn lit_matches(v: &Value, lit: &Literal) -> bool {
    let w = lit.to_value();
    if w.is_null() {
        return v.is_null();
    }
    v.compare(&w) == Some(Ordering::Equal)
}

// ---------------------------------------------------------------------------
// Engine/oracle result comparison
// ---------------------------------------------------------------------------

pub fn engine_rows(rel: &Relation) -> Vec<ORow> {
    let names: Vec<String> = rel.header.attrs.iter().map(|a| a.name.clone()).collect();
    rel.rows
        .iter()
        .map(|r| names.iter().cloned().zip(r.iter().cloned()).collect())
        .collect()
}

/// Render a value for sorting and display; doubles are rounded so that
/// equal-up-to-float-noise rows land on the same key.
fn canon_value(v: &Value) -> String {
    match v {
        Value::Null => "\\N".to_string(),
        Value::Double(d) => format!("{:.9}", d),
        other => other.to_string(),
    }
}

fn canon_rows(rows: &[ORow]) -> Vec<Vec<(String, String)>> {
    let mut out: Vec<Vec<(String, String)>> = rows
        .iter()
        .map(|r| r.iter().map(|(k, v)| (k.clone(), canon_value(v))).collect())
        .collect();
    out.sort();
    out
}

/// Assert that the engine result and oracle rows agree row-for-row
/// (order-insensitive; doubles compared to nine decimal places).
pub fn assert_same_result(label: &str, rel: &Relation, oracle: &[ORow]) {
    let engine = canon_rows(&engine_rows(rel));
    let oracle = canon_rows(oracle);
    assert_eq!(
        engine, oracle,
        "engine and oracle disagree on `{label}`"
    );
}

/// Evaluate `query` with both the engine and the oracle and compare.
pub fn check_query(store: &Store, query: &str) {
    let expr = parse(query);
    let rel = djengine::algebra::eval(&expr, store)
        .unwrap_or_else(|e| panic!("engine failed on `{query}`: {e}"));
    let rows = oracle_eval(&expr, store)
        .unwrap_or_else(|e| panic!("oracle failed on `{query}`: {e}"));
    assert_same_result(query, &rel, &rows);
}
