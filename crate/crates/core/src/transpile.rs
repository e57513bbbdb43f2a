//! Source-to-source compilation of declarations, queries, and
//! manipulations into SQL.
//!
//! Shapes follow the reference translations: restriction by an entity set
//! becomes `IN (SELECT ...)` on the homologous namesake attributes, join
//! becomes `NATURAL JOIN`, and aggregation becomes `LEFT JOIN` + `GROUP BY`
//! over the first operand's primary key. Constraints SQL cannot express
//! (union or restricted dependency targets) degrade to documentation
//! comments; the in-memory engine remains the enforcement reference.

use crate::algebra::{analyze, HeaderSource, RelationHeader};
use crate::catalog::{Catalog, DepSpec, EntitySpec};
use crate::error::{CatalogError, QueryError, StoreError};
use crate::lang::ast::*;
use crate::lang::printer::print_query;
use crate::value::Datatype;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dialect {
    /// MySQL-flavored output with COMMENT clauses and bare identifiers.
    #[default]
    Mysql,
    /// SQLite-compatible output: comments stripped, enums mapped to
    /// varchar + CHECK, identifiers quoted.
    Sqlite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SqlOptions {
    pub dialect: Dialect,
    /// Emit ON DELETE CASCADE on foreign keys (the delete semantics
    /// require cascading even though plain FK clauses do not imply it).
    pub cascade: bool,
}

impl Default for SqlOptions {
    fn default() -> Self {
        SqlOptions {
            dialect: Dialect::Mysql,
            cascade: true,
        }
    }
}

fn table_name(entity: &str) -> String {
    entity.replace('.', "__")
}

fn ident(name: &str, opts: &SqlOptions) -> String {
    match opts.dialect {
        Dialect::Mysql => name.to_string(),
        Dialect::Sqlite => format!("\"{name}\""),
    }
}

fn sql_string(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}

fn datatype_sql(dt: &Datatype, attr: &str, opts: &SqlOptions) -> String {
    match (dt, opts.dialect) {
        (Datatype::Enum(vals), Dialect::Sqlite) => {
            let longest = vals.iter().map(|v| v.len()).max().unwrap_or(1);
            let list: Vec<String> = vals.iter().map(|v| sql_string(v)).collect();
            format!(
                "varchar({longest}) CHECK ({} IN ({}))",
                ident(attr, opts),
                list.join(", ")
            )
        }
        _ => dt.to_string(),
    }
}

fn literal_sql(lit: &Literal) -> String {
    match lit {
        Literal::Int(i) => i.to_string(),
        Literal::Double(d) => d.to_string(),
        Literal::Str(s) => sql_string(s),
        Literal::Null => "NULL".to_string(),
    }
}

/// One CREATE TABLE statement for a declared entity set.
pub fn ddl_to_sql(
    catalog: &Catalog,
    entity: &str,
    opts: &SqlOptions,
) -> Result<String, CatalogError> {
    let spec = catalog
        .get(entity)
        .ok_or_else(|| CatalogError::UnknownReference(entity.to_string()))?;
    let mut lines: Vec<String> = Vec::new();
    for attr in &spec.attrs {
        let mut line = format!(
            "   {} {}",
            ident(&attr.name, opts),
            datatype_sql(&attr.datatype, &attr.name, opts)
        );
        if !attr.nullable {
            line.push_str(" NOT NULL");
        }
        if let Some(default) = &attr.default {
            if !matches!(default, Literal::Null) {
                line.push_str(&format!(" DEFAULT {}", literal_sql(default)));
            }
        }
        if opts.dialect == Dialect::Mysql {
            if let Some(comment) = &attr.comment {
                line.push_str(&format!(" COMMENT \"{}\"", comment.replace('"', "\\\"")));
            }
        }
        lines.push(line);
    }
    if spec.is_singleton() {
        // the phantom attribute made concrete: a constant column whose
        // primary key caps the table at one row
        lines.push("   _omega char(1) NOT NULL DEFAULT '1' CHECK (_omega = '1')".into());
        lines.push("   PRIMARY KEY (_omega)".into());
    } else {
        let pk: Vec<String> = spec
            .attrs
            .iter()
            .filter(|a| a.is_primary)
            .map(|a| ident(&a.name, opts))
            .collect();
        lines.push(format!("   PRIMARY KEY ({})", pk.join(", ")));
    }
    for dep in &spec.deps {
        for clause in fk_clauses(catalog, dep, opts) {
            lines.push(clause);
        }
    }
    Ok(format!(
        "CREATE TABLE {} (\n{}\n);",
        ident(&table_name(entity), opts),
        lines.join(",\n")
    ))
}

/// FOREIGN KEY clauses (or documentation comments) for one dependency.
/// Targets that are a base set, or a projection-rename of one, map onto a
/// real FK; joins yield one FK per operand; anything else degrades to a
/// comment.
fn fk_clauses(catalog: &Catalog, dep: &DepSpec, opts: &SqlOptions) -> Vec<String> {
    match &dep.target {
        QueryExpr::Base(name) => {
            let cols: Vec<String> = dep.fk_attrs.iter().map(|a| ident(a, opts)).collect();
            vec![fk_line(&cols, name, &cols, opts)]
        }
        QueryExpr::Project {
            input,
            items,
            ellipsis: _,
        } if matches!(input.as_ref(), QueryExpr::Base(_)) => {
            let QueryExpr::Base(name) = input.as_ref() else {
                unreachable!()
            };
            let cols: Vec<String> = dep.fk_attrs.iter().map(|a| ident(a, opts)).collect();
            let originals: Vec<String> = dep
                .fk_attrs
                .iter()
                .map(|a| {
                    let original = items
                        .iter()
                        .find_map(|it| match it {
                            ProjItem::Rename { new, old } if new == a => Some(old.clone()),
                            _ => None,
                        })
                        .unwrap_or_else(|| a.clone());
                    ident(&original, opts)
                })
                .collect();
            vec![fk_line(&cols, name, &originals, opts)]
        }
        QueryExpr::Join(a, b) => {
            let mut clauses = Vec::new();
            for operand in [a.as_ref(), b.as_ref()] {
                clauses.extend(operand_fk(catalog, operand, dep, opts));
            }
            clauses
        }
        other => vec![format!(
            "   -- reference constraint on ({}): {} (engine-enforced)",
            dep.fk_attrs.join(", "),
            print_query(other)
        )],
    }
}

fn operand_fk(
    catalog: &Catalog,
    expr: &QueryExpr,
    dep: &DepSpec,
    opts: &SqlOptions,
) -> Vec<String> {
    match expr {
        QueryExpr::Base(name) => {
            // each join operand contributes its own primary key columns
            let pk: Vec<String> = catalog
                .get(name)
                .map(|s| {
                    s.attrs
                        .iter()
                        .filter(|a| a.is_primary)
                        .map(|a| a.name.clone())
                        .collect()
                })
                .unwrap_or_default();
            let cols: Vec<String> = dep
                .fk_attrs
                .iter()
                .filter(|a| pk.contains(a))
                .map(|a| ident(a, opts))
                .collect();
            vec![fk_line(&cols, name, &cols, opts)]
        }
        other => vec![format!(
            "   -- reference constraint on ({}): {} (engine-enforced)",
            dep.fk_attrs.join(", "),
            print_query(other)
        )],
    }
}

fn fk_line(cols: &[String], target: &str, refs: &[String], opts: &SqlOptions) -> String {
    let mut line = format!(
        "   FOREIGN KEY ({}) REFERENCES {}({})",
        cols.join(", "),
        ident(&table_name(target), opts),
        refs.join(", ")
    );
    if opts.cascade {
        line.push_str(" ON DELETE CASCADE");
    }
    line
}

/// A SELECT statement for a query expression.
pub fn query_to_sql(
    src: &dyn HeaderSource,
    expr: &QueryExpr,
    opts: &SqlOptions,
) -> Result<String, QueryError> {
    // validate up front so emitted SQL always corresponds to a well-formed
    // entity set
    analyze(expr, src)?;
    select_sql(src, expr, opts)
}

fn select_sql(
    src: &dyn HeaderSource,
    expr: &QueryExpr,
    opts: &SqlOptions,
) -> Result<String, QueryError> {
    match expr {
        QueryExpr::Base(name) => Ok(format!(
            "SELECT * FROM {}",
            ident(&table_name(name), opts)
        )),
        QueryExpr::Restrict {
            input,
            cond,
            exclude,
        } => {
            if let QueryExpr::Universal(attrs) = input.as_ref() {
                let Condition::Subquery(sub) = cond.as_ref() else {
                    return Err(QueryError::UnsupportedUniversalRestriction);
                };
                let cols: Vec<String> = attrs.iter().map(|a| ident(a, opts)).collect();
                let inner = select_sql(src, sub, opts)?;
                return Ok(format!(
                    "SELECT DISTINCT {} FROM ({inner}) AS _u",
                    cols.join(", ")
                ));
            }
            let header = analyze(input, src)?;
            let where_sql = cond_sql(src, cond, &header, *exclude, opts)?;
            match input.as_ref() {
                QueryExpr::Base(name) => Ok(format!(
                    "SELECT * FROM {} WHERE {where_sql}",
                    ident(&table_name(name), opts)
                )),
                _ => Ok(format!(
                    "SELECT * FROM ({}) AS _r WHERE {where_sql}",
                    select_sql(src, input, opts)?
                )),
            }
        }
        QueryExpr::Join(a, b) => {
            let left = from_operand(src, a, opts)?;
            let right = from_operand(src, b, opts)?;
            Ok(format!("SELECT * FROM {left} NATURAL JOIN {right}"))
        }
        QueryExpr::Project {
            input,
            items,
            ellipsis: _,
        } => {
            let header = analyze(expr, src)?;
            let input_header = analyze(input, src)?;
            let cols = output_columns(&header, items, &input_header, None, opts);
            Ok(format!(
                "SELECT DISTINCT {} FROM {}",
                cols.join(", "),
                from_operand(src, input, opts)?
            ))
        }
        QueryExpr::Aggregate {
            input,
            group,
            items,
        } => aggregate_sql(src, input, group, items, opts),
        QueryExpr::Union(a, b) => {
            let ha = analyze(a, src)?;
            let left = select_sql(src, a, opts)?;
            let right = select_sql(src, b, opts)?;
            // align the right operand's columns with the left's order
            let cols: Vec<String> = ha.attrs.iter().map(|x| ident(&x.name, opts)).collect();
            Ok(format!(
                "{left} UNION SELECT {} FROM ({right}) AS _b",
                cols.join(", ")
            ))
        }
        QueryExpr::Universal(attrs) => {
            if attrs.is_empty() {
                // the singleton set of the empty tuple
                Ok("SELECT DISTINCT 1 AS _omega FROM (SELECT 1) AS _o".to_string())
            } else {
                Err(QueryError::UniversalNotMaterializable)
            }
        }
    }
}

fn from_operand(
    src: &dyn HeaderSource,
    expr: &QueryExpr,
    opts: &SqlOptions,
) -> Result<String, QueryError> {
    match expr {
        QueryExpr::Base(name) => Ok(ident(&table_name(name), opts)),
        _ => Ok(format!("({}) AS _t{}", select_sql(src, expr, opts)?, fresh())),
    }
}

fn fresh() -> u64 {
    use std::sync::atomic::{AtomicU64, Ordering};
    static NEXT: AtomicU64 = AtomicU64::new(0);
    NEXT.fetch_add(1, Ordering::Relaxed)
}

fn output_columns(
    out: &RelationHeader,
    items: &[ProjItem],
    input: &RelationHeader,
    qualifier: Option<&str>,
    opts: &SqlOptions,
) -> Vec<String> {
    let q = |name: &str| match qualifier {
        Some(t) => format!("{t}.{}", ident(name, opts)),
        None => ident(name, opts),
    };
    out.attrs
        .iter()
        .map(|attr| {
            if let Some(old) = items.iter().find_map(|it| match it {
                ProjItem::Rename { new, old } if new == &attr.name => Some(old),
                _ => None,
            }) {
                return format!("{} AS {}", q(old), ident(&attr.name, opts));
            }
            if let Some(expr) = items.iter().find_map(|it| match it {
                ProjItem::Compute { name, expr } if name == &attr.name => Some(expr),
                _ => None,
            }) {
                return format!(
                    "{} AS {}",
                    scalar_sql(expr, qualifier, None, opts),
                    ident(&attr.name, opts)
                );
            }
            let _ = input;
            q(&attr.name)
        })
        .collect()
}

fn aggregate_sql(
    src: &dyn HeaderSource,
    input: &QueryExpr,
    group: &QueryExpr,
    items: &[ProjItem],
    opts: &SqlOptions,
) -> Result<String, QueryError> {
    let hb = analyze(group, src)?;
    let (ha, left_from) = if let QueryExpr::Universal(attrs) = input {
        let header = analyze(
            &QueryExpr::Restrict {
                input: Box::new(QueryExpr::Universal(attrs.clone())),
                cond: Box::new(Condition::Subquery(group.clone())),
                exclude: false,
            },
            src,
        )?;
        let from = if attrs.is_empty() {
            "(SELECT 1 AS _omega) AS a".to_string()
        } else {
            let cols: Vec<String> = attrs.iter().map(|a| ident(a, opts)).collect();
            let inner = select_sql(src, group, opts)?;
            format!(
                "(SELECT DISTINCT {} FROM ({inner}) AS _u) AS a",
                cols.join(", ")
            )
        };
        (header, from)
    } else {
        let from = match input {
            QueryExpr::Base(name) => format!("{} AS a", ident(&table_name(name), opts)),
            _ => format!("({}) AS a", select_sql(src, input, opts)?),
        };
        (analyze(input, src)?, from)
    };
    let right = format!("({}) AS b", select_sql(src, group, opts)?);
    let shared: Vec<String> = ha
        .attrs
        .iter()
        .filter(|x| {
            hb.find(&x.name)
                .map(|y| x.lineage.homologous(&y.lineage))
                .unwrap_or(false)
        })
        .map(|x| x.name.clone())
        .collect();
    let on = if shared.is_empty() {
        "1 = 1".to_string()
    } else {
        shared
            .iter()
            .map(|n| format!("a.{} = b.{}", ident(n, opts), ident(n, opts)))
            .collect::<Vec<_>>()
            .join(" AND ")
    };
    let out = crate::algebra::analyze(
        &QueryExpr::Aggregate {
            input: Box::new(input.clone()),
            group: Box::new(group.clone()),
            items: items.to_vec(),
        },
        src,
    )?;
    // count of matched rows must see NULL for unmatched left rows: count
    // over a join column of b, or any b column when none are shared
    let count_col = shared
        .first()
        .cloned()
        .or_else(|| hb.attrs.first().map(|x| x.name.clone()));
    let mut cols = Vec::new();
    for attr in &out.attrs {
        if let Some(expr) = items.iter().find_map(|it| match it {
            ProjItem::Compute { name, expr } if name == &attr.name => Some(expr),
            _ => None,
        }) {
            cols.push(format!(
                "{} AS {}",
                scalar_sql(expr, Some("a"), Some(("b", count_col.as_deref())), opts),
                ident(&attr.name, opts)
            ));
        } else if let Some(old) = items.iter().find_map(|it| match it {
            ProjItem::Rename { new, old } if new == &attr.name => Some(old),
            _ => None,
        }) {
            cols.push(format!("a.{} AS {}", ident(old, opts), ident(&attr.name, opts)));
        } else {
            cols.push(format!("a.{}", ident(&attr.name, opts)));
        }
    }
    let group_by: Vec<String> = ha
        .attrs
        .iter()
        .map(|x| format!("a.{}", ident(&x.name, opts)))
        .collect();
    let group_clause = if group_by.is_empty() {
        String::new()
    } else {
        format!(" GROUP BY {}", group_by.join(", "))
    };
    Ok(format!(
        "SELECT {} FROM {left_from} LEFT JOIN {right} ON {on}{group_clause}",
        cols.join(", ")
    ))
}

/// Scalar expression to SQL. `aggr` carries the qualifier for columns
/// inside aggregation calls and the column standing in for count().
fn scalar_sql(
    expr: &ScalarExpr,
    qualifier: Option<&str>,
    aggr: Option<(&str, Option<&str>)>,
    opts: &SqlOptions,
) -> String {
    match expr {
        ScalarExpr::Attr(name) => match qualifier {
            Some(t) => format!("{t}.{}", ident(name, opts)),
            None => ident(name, opts),
        },
        ScalarExpr::Lit(l) => literal_sql(l),
        ScalarExpr::Binary { op, left, right } => format!(
            "({} {} {})",
            scalar_sql(left, qualifier, aggr, opts),
            op.symbol(),
            scalar_sql(right, qualifier, aggr, opts)
        ),
        ScalarExpr::Call { name, args } => {
            let (group_q, count_col) = match aggr {
                Some((q, c)) => (Some(q), c),
                None => (qualifier, None),
            };
            if name == "count" && args.is_empty() {
                return match count_col {
                    Some(c) => format!(
                        "COUNT({}.{})",
                        group_q.unwrap_or("b"),
                        ident(c, opts)
                    ),
                    None => "COUNT(*)".to_string(),
                };
            }
            let sql_fn = match name.as_str() {
                "stddev" => "STDDEV_POP",
                "var" => "VAR_POP",
                other => return_upper(other),
            };
            let rendered: Vec<String> = args
                .iter()
                .map(|a| scalar_sql(a, group_q, None, opts))
                .collect();
            format!("{sql_fn}({})", rendered.join(", "))
        }
    }
}

fn return_upper(s: &str) -> &'static str {
    match s {
        "count" => "COUNT",
        "sum" => "SUM",
        "min" => "MIN",
        "max" => "MAX",
        "avg" => "AVG",
        "median" => "MEDIAN",
        "percentile" => "PERCENTILE",
        _ => "UNKNOWN",
    }
}

fn cond_sql(
    src: &dyn HeaderSource,
    cond: &Condition,
    header: &RelationHeader,
    negate: bool,
    opts: &SqlOptions,
) -> Result<String, QueryError> {
    let positive = match cond {
        Condition::Cmp { left, op, right } => {
            let op_sql = match op {
                CmpOp::Eq => "=",
                CmpOp::Ne => "<>",
                CmpOp::Lt => "<",
                CmpOp::Le => "<=",
                CmpOp::Gt => ">",
                CmpOp::Ge => ">=",
            };
            format!(
                "{} {op_sql} {}",
                scalar_sql(left, None, None, opts),
                scalar_sql(right, None, None, opts)
            )
        }
        Condition::In { left, list } => {
            let items: Vec<String> = list.iter().map(literal_sql).collect();
            format!(
                "{} IN ({})",
                scalar_sql(left, None, None, opts),
                items.join(", ")
            )
        }
        Condition::Mapping(pairs) => {
            let parts: Vec<String> = pairs
                .iter()
                .filter(|(k, _)| header.find(k).is_some())
                .map(|(k, v)| match v {
                    Literal::Null => format!("{} IS NULL", ident(k, opts)),
                    other => format!("{} = {}", ident(k, opts), literal_sql(other)),
                })
                .collect();
            if parts.is_empty() {
                "1 = 1".to_string()
            } else {
                parts.join(" AND ")
            }
        }
        Condition::OrList(cs) => {
            if cs.is_empty() {
                "1 = 0".to_string()
            } else {
                let parts: Vec<String> = cs
                    .iter()
                    .map(|c| cond_sql(src, c, header, false, opts))
                    .collect::<Result<_, _>>()?;
                parts.join(" OR ")
            }
        }
        Condition::AndFn(cs) => {
            if cs.is_empty() {
                "1 = 1".to_string()
            } else {
                let parts: Vec<String> = cs
                    .iter()
                    .map(|c| cond_sql(src, c, header, false, opts))
                    .collect::<Result<_, _>>()?;
                parts
                    .iter()
                    .map(|p| format!("({p})"))
                    .collect::<Vec<_>>()
                    .join(" AND ")
            }
        }
        Condition::NotFn(c) => {
            return cond_sql(src, c, header, !negate, opts);
        }
        Condition::Subquery(sub) => {
            let hs = analyze(sub, src)?;
            let matched: Vec<String> = header
                .attrs
                .iter()
                .filter(|a| {
                    hs.find(&a.name)
                        .map(|b| a.lineage.homologous(&b.lineage))
                        .unwrap_or(false)
                })
                .map(|a| a.name.clone())
                .collect();
            let inner_from = match sub {
                QueryExpr::Base(name) => ident(&table_name(name), opts),
                QueryExpr::Restrict {
                    input,
                    cond: inner_cond,
                    exclude,
                } if matches!(input.as_ref(), QueryExpr::Base(_)) => {
                    let QueryExpr::Base(name) = input.as_ref() else {
                        unreachable!()
                    };
                    let ih = analyze(input, src)?;
                    let w = cond_sql(src, inner_cond, &ih, *exclude, opts)?;
                    format!("{} WHERE {w}", ident(&table_name(name), opts))
                }
                _ => format!("({}) AS _s{}", select_sql(src, sub, opts)?, fresh()),
            };
            if matched.is_empty() {
                let ex = format!("EXISTS (SELECT 1 FROM {inner_from})");
                return Ok(if negate { format!("NOT {ex}") } else { ex });
            }
            let cols: Vec<String> = matched.iter().map(|n| ident(n, opts)).collect();
            let tuple = if cols.len() == 1 {
                cols[0].clone()
            } else {
                format!("({})", cols.join(", "))
            };
            let kw = if negate { "NOT IN" } else { "IN" };
            return Ok(format!(
                "{tuple} {kw} (SELECT {} FROM {inner_from})",
                cols.join(", ")
            ));
        }
    };
    Ok(if negate {
        format!("NOT ({positive})")
    } else {
        positive
    })
}

/// INSERT / DELETE / UPDATE statements for a manipulation.
pub fn manipulation_to_sql(
    catalog: &Catalog,
    m: &Manipulation,
    opts: &SqlOptions,
) -> Result<String, StoreError> {
    match m {
        Manipulation::Insert {
            entity,
            attrs,
            rows,
        } => {
            let spec = spec_of(catalog, entity)?;
            let names: Vec<String> = if attrs.is_empty() {
                spec.attrs.iter().map(|a| a.name.clone()).collect()
            } else {
                attrs.clone()
            };
            let cols: Vec<String> = names.iter().map(|n| ident(n, opts)).collect();
            let tuples: Vec<String> = rows
                .iter()
                .map(|r| {
                    let vals: Vec<String> = r.iter().map(literal_sql).collect();
                    format!("({})", vals.join(", "))
                })
                .collect();
            Ok(format!(
                "INSERT INTO {} ({}) VALUES {};",
                ident(&table_name(entity), opts),
                cols.join(", "),
                tuples.join(", ")
            ))
        }
        Manipulation::Delete { entity, cond } => {
            let spec = spec_of(catalog, entity)?;
            let w = cond_sql(catalog, cond, &spec.header(), false, opts)?;
            Ok(format!(
                "DELETE FROM {} WHERE {w};",
                ident(&table_name(entity), opts)
            ))
        }
        Manipulation::Update {
            entity,
            cond,
            assignments,
        } => {
            let spec = spec_of(catalog, entity)?;
            let w = cond_sql(catalog, cond, &spec.header(), false, opts)?;
            let sets: Vec<String> = assignments
                .iter()
                .map(|(k, v)| format!("{} = {}", ident(k, opts), literal_sql(v)))
                .collect();
            Ok(format!(
                "UPDATE {} SET {} WHERE {w};",
                ident(&table_name(entity), opts),
                sets.join(", ")
            ))
        }
        Manipulation::Populate { entity, .. } => Err(StoreError::UnknownEntity(format!(
            "populate {entity} has no SQL translation"
        ))),
    }
}

fn spec_of<'a>(catalog: &'a Catalog, entity: &str) -> Result<&'a EntitySpec, StoreError> {
    catalog
        .get(entity)
        .ok_or_else(|| StoreError::UnknownEntity(entity.to_string()))
}
