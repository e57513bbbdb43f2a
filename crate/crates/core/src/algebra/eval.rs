//! Row-level evaluation of query expressions against an in-memory source.

use std::cmp::Ordering;
use std::collections::HashSet;

use crate::error::QueryError;
use crate::lang::ast::*;
use crate::value::Value;

use super::analyze::{
    join_header, projection_header, union_header, universal_header, HeaderSource,
};
use super::RelationHeader;

/// A materialized entity set: a header plus deduplicated rows laid out in
/// header attribute order.
#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    pub header: RelationHeader,
    pub rows: Vec<Vec<Value>>,
}

impl Relation {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows sorted by primary key, then by the remaining attributes, for
    /// deterministic output.
    pub fn sorted_rows(&self) -> Vec<Vec<Value>> {
        let mut order: Vec<usize> = Vec::new();
        for (i, a) in self.header.attrs.iter().enumerate() {
            if a.is_primary {
                order.push(i);
            }
        }
        for (i, a) in self.header.attrs.iter().enumerate() {
            if !a.is_primary {
                order.push(i);
            }
        }
        let mut rows = self.rows.clone();
        rows.sort_by(|a, b| {
            for &i in &order {
                match a[i].total_order(&b[i]) {
                    Ordering::Equal => continue,
                    other => return other,
                }
            }
            Ordering::Equal
        });
        rows
    }
}

/// Where base entity-set rows come from (implemented by the store).
pub trait RelationSource: HeaderSource {
    fn base_relation(&self, name: &str) -> Result<Relation, QueryError>;
}

fn dedup_rows(rows: Vec<Vec<Value>>) -> Vec<Vec<Value>> {
    let mut seen = HashSet::new();
    rows.into_iter().filter(|r| seen.insert(r.clone())).collect()
}

pub fn eval(expr: &QueryExpr, src: &dyn RelationSource) -> Result<Relation, QueryError> {
    match expr {
        QueryExpr::Base(name) => src.base_relation(name),
        QueryExpr::Universal(attrs) => {
            if attrs.is_empty() {
                // U() is the singleton set of the empty tuple
                Ok(Relation {
                    header: universal_header(attrs, None)?,
                    rows: vec![Vec::new()],
                })
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
                let Condition::Subquery(sub) = cond.as_ref() else {
                    return Err(QueryError::UnsupportedUniversalRestriction);
                };
                if *exclude {
                    return Err(QueryError::UnsupportedUniversalRestriction);
                }
                let context = eval(sub, src)?;
                return materialize_universal(attrs, &context);
            }
            let rel = eval(input, src)?;
            let compiled = compile_condition(cond, &rel.header, src)?;
            let rows = rel
                .rows
                .into_iter()
                .filter(|row| cond_matches(&compiled, row) != *exclude)
                .collect();
            Ok(Relation {
                header: rel.header,
                rows,
            })
        }
        QueryExpr::Join(a, b) => {
            // a universal operand draws its tuples from the other operand
            match (a.as_ref(), b.as_ref()) {
                (QueryExpr::Universal(attrs), other) | (other, QueryExpr::Universal(attrs))
                    if !matches!(other, QueryExpr::Universal(_)) =>
                {
                    let concrete = eval(other, src)?;
                    let uni = materialize_universal(attrs, &concrete)?;
                    if matches!(a.as_ref(), QueryExpr::Universal(_)) {
                        join(&uni, &concrete)
                    } else {
                        join(&concrete, &uni)
                    }
                }
                (QueryExpr::Universal(_), QueryExpr::Universal(_)) => {
                    Err(QueryError::UniversalNotMaterializable)
                }
                _ => {
                    let ra = eval(a, src)?;
                    let rb = eval(b, src)?;
                    join(&ra, &rb)
                }
            }
        }
        QueryExpr::Project {
            input,
            items,
            ellipsis,
        } => {
            let rel = eval(input, src)?;
            project(&rel, items, *ellipsis)
        }
        QueryExpr::Aggregate {
            input,
            group,
            items,
        } => {
            let rb = eval(group, src)?;
            let ra = if let QueryExpr::Universal(attrs) = input.as_ref() {
                materialize_universal(attrs, &rb)?
            } else {
                eval(input, src)?
            };
            aggregate(&ra, &rb, items)
        }
        QueryExpr::Union(a, b) => {
            let ra = eval(a, src)?;
            let rb = eval(b, src)?;
            union(&ra, &rb)
        }
    }
}

/// The distinct tuples a universal set takes from a context entity set.
/// Tuples containing nulls are excluded: a primary key is never null.
pub fn materialize_universal(
    attrs: &[String],
    context: &Relation,
) -> Result<Relation, QueryError> {
    let header = universal_header(attrs, Some(&context.header))?;
    if attrs.is_empty() {
        // U() holds exactly the empty tuple regardless of context
        return Ok(Relation {
            header,
            rows: vec![Vec::new()],
        });
    }
    let idx: Vec<usize> = attrs
        .iter()
        .map(|a| context.header.index_of(a).unwrap())
        .collect();
    let rows = context
        .rows
        .iter()
        .filter_map(|row| {
            let tuple: Vec<Value> = idx.iter().map(|&i| row[i].clone()).collect();
            if tuple.iter().any(Value::is_null) {
                None
            } else {
                Some(tuple)
            }
        })
        .collect();
    Ok(Relation {
        header,
        rows: dedup_rows(rows),
    })
}

fn values_match(a: &Value, b: &Value) -> bool {
    !a.is_null() && !b.is_null() && a.compare(b) == Some(Ordering::Equal)
}

fn join(ra: &Relation, rb: &Relation) -> Result<Relation, QueryError> {
    let header = join_header(&ra.header, &rb.header)?;
    let shared: Vec<(usize, usize)> = ra
        .header
        .attrs
        .iter()
        .enumerate()
        .filter_map(|(i, a)| rb.header.index_of(&a.name).map(|j| (i, j)))
        .collect();
    let b_only: Vec<usize> = rb
        .header
        .attrs
        .iter()
        .enumerate()
        .filter(|(_, b)| ra.header.find(&b.name).is_none())
        .map(|(j, _)| j)
        .collect();
    let mut rows = Vec::new();
    for x in &ra.rows {
        for y in &rb.rows {
            if shared.iter().all(|&(i, j)| values_match(&x[i], &y[j])) {
                let mut row = x.clone();
                row.extend(b_only.iter().map(|&j| y[j].clone()));
                rows.push(row);
            }
        }
    }
    Ok(Relation {
        header,
        rows: dedup_rows(rows),
    })
}

fn union(ra: &Relation, rb: &Relation) -> Result<Relation, QueryError> {
    let header = union_header(&ra.header, &rb.header)?;
    let realign: Vec<usize> = header
        .attrs
        .iter()
        .map(|a| rb.header.index_of(&a.name).unwrap())
        .collect();
    let mut rows = ra.rows.clone();
    let b_rows: Vec<Vec<Value>> = rb
        .rows
        .iter()
        .map(|row| realign.iter().map(|&j| row[j].clone()).collect())
        .collect();
    let has_secondary = header.attrs.iter().any(|a| !a.is_primary);
    if has_secondary {
        // with secondary attributes present the operands must be disjoint
        let pk_idx: Vec<usize> = header
            .attrs
            .iter()
            .enumerate()
            .filter(|(_, a)| a.is_primary)
            .map(|(i, _)| i)
            .collect();
        let keys: HashSet<Vec<Value>> = rows
            .iter()
            .map(|r| pk_idx.iter().map(|&i| r[i].clone()).collect())
            .collect();
        for row in &b_rows {
            let key: Vec<Value> = pk_idx.iter().map(|&i| row[i].clone()).collect();
            if keys.contains(&key) {
                return Err(QueryError::UnionOverlap);
            }
        }
    }
    rows.extend(b_rows);
    Ok(Relation {
        header,
        rows: dedup_rows(rows),
    })
}

fn project(rel: &Relation, items: &[ProjItem], ellipsis: bool) -> Result<Relation, QueryError> {
    let header = projection_header(&rel.header, items, ellipsis, None)?;
    let rows = rel
        .rows
        .iter()
        .map(|row| output_row(&header, items, &rel.header, row, None, &[]))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Relation {
        header,
        rows: dedup_rows(rows),
    })
}

fn aggregate(ra: &Relation, rb: &Relation, items: &[ProjItem]) -> Result<Relation, QueryError> {
    let header = projection_header(&ra.header, items, false, Some(&rb.header))?;
    let shared: Vec<(usize, usize)> = ra
        .header
        .attrs
        .iter()
        .enumerate()
        .filter_map(|(i, a)| {
            rb.header
                .find(&a.name)
                .filter(|b| a.lineage.homologous(&b.lineage))
                .and_then(|_| rb.header.index_of(&a.name).map(|j| (i, j)))
        })
        .collect();
    let mut rows = Vec::new();
    for x in &ra.rows {
        let group: Vec<&Vec<Value>> = rb
            .rows
            .iter()
            .filter(|y| shared.iter().all(|&(i, j)| values_match(&x[i], &y[j])))
            .collect();
        rows.push(output_row(
            &header,
            items,
            &ra.header,
            x,
            Some(&rb.header),
            &group,
        )?);
    }
    Ok(Relation {
        header,
        rows: dedup_rows(rows),
    })
}

/// Build one output row for projection (group absent) or aggregation.
fn output_row(
    out: &RelationHeader,
    items: &[ProjItem],
    input: &RelationHeader,
    row: &[Value],
    group_header: Option<&RelationHeader>,
    group: &[&Vec<Value>],
) -> Result<Vec<Value>, QueryError> {
    let mut values = Vec::with_capacity(out.attrs.len());
    for attr in &out.attrs {
        let rename = items.iter().find_map(|it| match it {
            ProjItem::Rename { new, old } if new == &attr.name => Some(old),
            _ => None,
        });
        let compute = items.iter().find_map(|it| match it {
            ProjItem::Compute { name, expr } if name == &attr.name => Some(expr),
            _ => None,
        });
        let value = if let Some(old) = rename {
            row[input.index_of(old).unwrap()].clone()
        } else if let Some(expr) = compute {
            match group_header {
                Some(gh) => eval_aggr_expr(expr, input, row, gh, group)?,
                None => eval_scalar(expr, input, row),
            }
        } else {
            row[input.index_of(&attr.name).unwrap()].clone()
        };
        values.push(value);
    }
    Ok(values)
}

/// Scalar evaluation over one row. Nulls propagate; division by zero is null.
pub fn eval_scalar(expr: &ScalarExpr, header: &RelationHeader, row: &[Value]) -> Value {
    match expr {
        ScalarExpr::Attr(name) => header
            .index_of(name)
            .map(|i| row[i].clone())
            .unwrap_or(Value::Null),
        ScalarExpr::Lit(l) => l.to_value(),
        ScalarExpr::Binary { op, left, right } => {
            let a = eval_scalar(left, header, row);
            let b = eval_scalar(right, header, row);
            apply_binop(*op, &a, &b)
        }
        // aggregation calls are rejected by analysis outside aggr items
        ScalarExpr::Call { .. } => Value::Null,
    }
}

fn apply_binop(op: BinOp, a: &Value, b: &Value) -> Value {
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

/// Expression evaluation inside an aggr item: attribute references inside
/// aggregation calls range over the matched group of the aggregated operand.
fn eval_aggr_expr(
    expr: &ScalarExpr,
    input: &RelationHeader,
    row: &[Value],
    group_header: &RelationHeader,
    group: &[&Vec<Value>],
) -> Result<Value, QueryError> {
    match expr {
        ScalarExpr::Attr(_) | ScalarExpr::Lit(_) => Ok(eval_scalar(expr, input, row)),
        ScalarExpr::Binary { op, left, right } => {
            let a = eval_aggr_expr(left, input, row, group_header, group)?;
            let b = eval_aggr_expr(right, input, row, group_header, group)?;
            Ok(apply_binop(*op, &a, &b))
        }
        ScalarExpr::Call { name, args } => {
            if !AGGR_FNS.contains(&name.as_str()) {
                return Err(QueryError::UnknownFunction(name.clone()));
            }
            if name == "count" && args.is_empty() {
                return Ok(Value::Int(group.len() as i64));
            }
            let arg = args.first().ok_or_else(|| {
                QueryError::TypeMismatch(format!("{name}() needs an argument"))
            })?;
            let values: Vec<Value> = group
                .iter()
                .map(|g| eval_scalar(arg, group_header, g))
                .filter(|v| !v.is_null())
                .collect();
            Ok(apply_aggr_fn(name, &values, args.get(1)))
        }
    }
}

fn apply_aggr_fn(name: &str, values: &[Value], extra: Option<&ScalarExpr>) -> Value {
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
                Value::Int(values.iter().map(|v| v.as_f64().unwrap() as i64).sum())
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
                "stddev" | "var" => {
                    let mean = nums.iter().sum::<f64>() / n;
                    let var = nums.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
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
                    let frac = rank - lo as f64;
                    Value::Double(nums[lo] + (nums[hi] - nums[lo]) * frac)
                }
                _ => Value::Null,
            }
        }
    }
}

/// A scalar expression with attribute references resolved to row positions.
enum CompiledScalar {
    Col(usize),
    Lit(Value),
    Binary {
        op: BinOp,
        left: Box<CompiledScalar>,
        right: Box<CompiledScalar>,
    },
}

fn compile_scalar(expr: &ScalarExpr, header: &RelationHeader) -> Result<CompiledScalar, QueryError> {
    match expr {
        ScalarExpr::Attr(name) => header
            .index_of(name)
            .map(CompiledScalar::Col)
            .ok_or_else(|| QueryError::UnknownAttribute(name.clone())),
        ScalarExpr::Lit(l) => Ok(CompiledScalar::Lit(l.to_value())),
        ScalarExpr::Binary { op, left, right } => Ok(CompiledScalar::Binary {
            op: *op,
            left: Box::new(compile_scalar(left, header)?),
            right: Box::new(compile_scalar(right, header)?),
        }),
        ScalarExpr::Call { name, .. } => {
            Err(QueryError::AggrFnOutsideAggregate(name.clone()))
        }
    }
}

fn eval_compiled_scalar(expr: &CompiledScalar, row: &[Value]) -> Value {
    match expr {
        CompiledScalar::Col(i) => row[*i].clone(),
        CompiledScalar::Lit(v) => v.clone(),
        CompiledScalar::Binary { op, left, right } => apply_binop(
            *op,
            &eval_compiled_scalar(left, row),
            &eval_compiled_scalar(right, row),
        ),
    }
}

/// A restriction condition with subqueries pre-evaluated and mapping keys
/// resolved, ready for row-wise matching.
enum CompiledCond {
    Cmp {
        left: CompiledScalar,
        op: CmpOp,
        right: CompiledScalar,
    },
    In {
        left: CompiledScalar,
        list: Vec<Value>,
    },
    Mapping(Vec<(usize, Value)>),
    Or(Vec<CompiledCond>),
    And(Vec<CompiledCond>),
    Not(Box<CompiledCond>),
    /// Existence of a matching row in a materialized subquery; `pairs` are
    /// (input index, subquery index) of homologous namesakes. With no
    /// matched attributes only non-emptiness of the subquery matters.
    Exists {
        rows: Vec<Vec<Value>>,
        pairs: Vec<(usize, usize)>,
    },
}

fn compile_condition(
    cond: &Condition,
    header: &RelationHeader,
    src: &dyn RelationSource,
) -> Result<CompiledCond, QueryError> {
    Ok(match cond {
        Condition::Cmp { left, op, right } => CompiledCond::Cmp {
            left: compile_scalar(left, header)?,
            op: *op,
            right: compile_scalar(right, header)?,
        },
        Condition::In { left, list } => CompiledCond::In {
            left: compile_scalar(left, header)?,
            list: list.iter().map(Literal::to_value).collect(),
        },
        Condition::Mapping(pairs) => CompiledCond::Mapping(
            pairs
                .iter()
                .filter_map(|(k, v)| header.index_of(k).map(|i| (i, v.to_value())))
                .collect(),
        ),
        Condition::OrList(cs) => CompiledCond::Or(
            cs.iter()
                .map(|c| compile_condition(c, header, src))
                .collect::<Result<_, _>>()?,
        ),
        Condition::AndFn(cs) => CompiledCond::And(
            cs.iter()
                .map(|c| compile_condition(c, header, src))
                .collect::<Result<_, _>>()?,
        ),
        Condition::NotFn(c) => {
            CompiledCond::Not(Box::new(compile_condition(c, header, src)?))
        }
        Condition::Subquery(e) => {
            let rel = eval(e, src)?;
            let pairs = header
                .attrs
                .iter()
                .enumerate()
                .filter_map(|(i, a)| {
                    rel.header
                        .find(&a.name)
                        .filter(|b| a.lineage.homologous(&b.lineage))
                        .and_then(|_| rel.header.index_of(&a.name).map(|j| (i, j)))
                })
                .collect();
            CompiledCond::Exists {
                rows: rel.rows,
                pairs,
            }
        }
    })
}

fn literal_matches(row_value: &Value, lit: &Value) -> bool {
    if lit.is_null() {
        return row_value.is_null();
    }
    row_value.compare(lit) == Some(Ordering::Equal)
}

fn cond_matches(cond: &CompiledCond, row: &[Value]) -> bool {
    match cond {
        CompiledCond::Cmp { left, op, right } => {
            let l = eval_compiled_scalar(left, row);
            let r = eval_compiled_scalar(right, row);
            match l.compare(&r) {
                None => false,
                Some(ord) => match op {
                    CmpOp::Eq => ord == Ordering::Equal,
                    CmpOp::Ne => ord != Ordering::Equal,
                    CmpOp::Lt => ord == Ordering::Less,
                    CmpOp::Le => ord != Ordering::Greater,
                    CmpOp::Gt => ord == Ordering::Greater,
                    CmpOp::Ge => ord != Ordering::Less,
                },
            }
        }
        CompiledCond::In { left, list } => {
            let l = eval_compiled_scalar(left, row);
            list.iter().any(|v| literal_matches(&l, v))
        }
        CompiledCond::Mapping(pairs) => {
            pairs.iter().all(|(i, v)| literal_matches(&row[*i], v))
        }
        CompiledCond::Or(cs) => cs.iter().any(|c| cond_matches(c, row)),
        CompiledCond::And(cs) => cs.iter().all(|c| cond_matches(c, row)),
        CompiledCond::Not(c) => !cond_matches(c, row),
        CompiledCond::Exists { rows, pairs } => {
            if pairs.is_empty() {
                return !rows.is_empty();
            }
            rows.iter()
                .any(|y| pairs.iter().all(|&(i, j)| values_match(&row[i], &y[j])))
        }
    }
}

/// Evaluate a restriction condition on one row of `header`. Used by the
/// store when applying delete and update restrictions.
pub fn eval_condition_on_row(
    cond: &Condition,
    header: &RelationHeader,
    row: &[Value],
    src: &dyn RelationSource,
) -> Result<bool, QueryError> {
    let compiled = compile_condition(cond, header, src)?;
    Ok(cond_matches(&compiled, row))
}
