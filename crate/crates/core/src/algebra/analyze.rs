//! Result-header analysis: entity type, attribute set, and primary key of
//! every query expression, with all ambiguity checks.

use std::collections::BTreeSet;

use crate::error::QueryError;
use crate::lang::ast::*;
use crate::lineage::Lineage;
use crate::value::Datatype;

use super::{AttrInfo, RelationHeader};

/// Where base entity-set headers come from (implemented by the catalog).
pub trait HeaderSource {
    fn base_header(&self, name: &str) -> Result<RelationHeader, QueryError>;
}

pub fn analyze(expr: &QueryExpr, src: &dyn HeaderSource) -> Result<RelationHeader, QueryError> {
    match expr {
        QueryExpr::Base(name) => src.base_header(name),
        QueryExpr::Universal(attrs) => universal_header(attrs, None),
        QueryExpr::Restrict {
            input,
            cond,
            exclude,
        } => {
            if let QueryExpr::Universal(attrs) = input.as_ref() {
                // a universal set may only be restricted by an entity set
                let Condition::Subquery(sub) = cond.as_ref() else {
                    return Err(QueryError::UnsupportedUniversalRestriction);
                };
                if *exclude {
                    return Err(QueryError::UnsupportedUniversalRestriction);
                }
                let context = analyze(sub, src)?;
                return universal_header(attrs, Some(&context));
            }
            let header = analyze(input, src)?;
            validate_condition(cond, &header, src)?;
            Ok(header)
        }
        QueryExpr::Join(a, b) => {
            let ha = analyze(a, src)?;
            let hb = analyze(b, src)?;
            join_header(&ha, &hb)
        }
        QueryExpr::Project {
            input,
            items,
            ellipsis,
        } => {
            let header = analyze(input, src)?;
            projection_header(&header, items, *ellipsis, None)
        }
        QueryExpr::Aggregate {
            input,
            group,
            items,
        } => {
            let hb = analyze(group, src)?;
            let ha = if let QueryExpr::Universal(attrs) = input.as_ref() {
                universal_header(attrs, Some(&hb))?
            } else {
                analyze(input, src)?
            };
            projection_header(&ha, items, false, Some(&hb))
        }
        QueryExpr::Union(a, b) => {
            let ha = analyze(a, src)?;
            let hb = analyze(b, src)?;
            union_header(&ha, &hb)
        }
    }
}

pub(super) fn universal_header(
    attrs: &[String],
    context: Option<&RelationHeader>,
) -> Result<RelationHeader, QueryError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for name in attrs {
        if !seen.insert(name.clone()) {
            return Err(QueryError::DuplicateOutputName(name.clone()));
        }
        let datatype = match context {
            Some(ctx) => ctx
                .find(name)
                .map(|a| a.datatype.clone())
                .ok_or_else(|| QueryError::UnknownAttribute(name.clone()))?,
            None => Datatype::Any,
        };
        out.push(AttrInfo {
            name: name.clone(),
            datatype,
            lineage: Lineage::universal(),
            is_primary: true,
            nullable: false,
        });
    }
    Ok(RelationHeader {
        attrs: out,
        entity_type: format!("universal({})", attrs.join(",")),
    })
}

pub(super) fn join_header(ha: &RelationHeader, hb: &RelationHeader) -> Result<RelationHeader, QueryError> {
    ha.joinable(hb).map_err(QueryError::NotJoinable)?;
    let mut attrs = Vec::new();
    for a in &ha.attrs {
        let mut attr = a.clone();
        if let Some(b) = hb.find(&a.name) {
            attr.is_primary = a.is_primary || b.is_primary;
            attr.nullable = a.nullable && b.nullable;
            // a universal attribute adopts the datatype and lineage of
            // whatever it matched
            if attr.datatype.is_any() {
                attr.datatype = b.datatype.clone();
            }
            if attr.lineage.is_universal() && !b.lineage.is_universal() {
                attr.lineage = b.lineage.clone();
            }
        }
        attrs.push(attr);
    }
    for b in &hb.attrs {
        if ha.find(&b.name).is_none() {
            attrs.push(b.clone());
        }
    }
    Ok(RelationHeader {
        attrs,
        entity_type: format!("pairing({},{})", ha.entity_type, hb.entity_type),
    })
}

pub(super) fn union_header(ha: &RelationHeader, hb: &RelationHeader) -> Result<RelationHeader, QueryError> {
    let names_a: BTreeSet<_> = ha.attrs.iter().map(|a| &a.name).collect();
    let names_b: BTreeSet<_> = hb.attrs.iter().map(|a| &a.name).collect();
    if names_a != names_b {
        return Err(QueryError::UnionIncompatible(
            "operands have different attribute names".into(),
        ));
    }
    let mut attrs = Vec::new();
    for a in &ha.attrs {
        let b = hb.find(&a.name).unwrap();
        if !a.datatype.compatible(&b.datatype) {
            return Err(QueryError::UnionIncompatible(format!(
                "attribute `{}` has datatype {} vs {}",
                a.name, a.datatype, b.datatype
            )));
        }
        if !a.lineage.homologous(&b.lineage) {
            return Err(QueryError::UnionIncompatible(format!(
                "attribute `{}` is not homologous across the operands",
                a.name
            )));
        }
        if a.is_primary != b.is_primary {
            return Err(QueryError::UnionIncompatible(format!(
                "attribute `{}` is primary in only one operand",
                a.name
            )));
        }
        let mut attr = a.clone();
        if attr.datatype.is_any() {
            attr.datatype = b.datatype.clone();
        }
        attr.lineage = a.lineage.merge(&b.lineage);
        attr.nullable = a.nullable || b.nullable;
        attrs.push(attr);
    }
    Ok(RelationHeader {
        attrs,
        entity_type: ha.entity_type.clone(),
    })
}

/// Output header of projection, also used for aggregation (with
/// `group` present aggregation calls become appended secondary attributes).
pub(super) fn projection_header(
    input: &RelationHeader,
    items: &[ProjItem],
    ellipsis: bool,
    group: Option<&RelationHeader>,
) -> Result<RelationHeader, QueryError> {
    // namesake attributes of the two aggregate operands that are not
    // homologous may not be referenced
    let ambiguous: BTreeSet<String> = match group {
        Some(g) => input.offending_namesakes(g).into_iter().collect(),
        None => BTreeSet::new(),
    };
    let check_ref = |name: &str, in_call: bool| -> Result<(), QueryError> {
        if ambiguous.contains(name) {
            return Err(QueryError::AmbiguousAttribute(name.to_string()));
        }
        let source = if in_call { group.unwrap() } else { input };
        if source.find(name).is_none() {
            return Err(QueryError::UnknownAttribute(name.to_string()));
        }
        Ok(())
    };

    let mut rename_of: Vec<(String, String)> = Vec::new(); // (old, new)
    let mut kept: Vec<String> = Vec::new();
    let mut computed: Vec<(String, &ScalarExpr)> = Vec::new();
    for item in items {
        match item {
            ProjItem::Keep(name) => {
                check_ref(name, false)?;
                kept.push(name.clone());
            }
            ProjItem::Rename { new, old } => {
                check_ref(old, false)?;
                if rename_of.iter().any(|(o, _)| o == old) {
                    return Err(QueryError::DuplicateOutputName(new.clone()));
                }
                rename_of.push((old.clone(), new.clone()));
            }
            ProjItem::Compute { name, expr } => {
                if expr.contains_aggr_call() && group.is_none() {
                    return Err(QueryError::AggrFnOutsideAggregate(first_aggr_fn(expr)));
                }
                for (attr, in_call) in attr_refs(expr) {
                    check_ref(&attr, in_call)?;
                }
                computed.push((name.clone(), expr));
            }
        }
    }

    let mentioned = |name: &str| {
        kept.iter().any(|k| k == name) || rename_of.iter().any(|(o, _)| o == name)
    };
    let mut out: Vec<AttrInfo> = Vec::new();
    for attr in &input.attrs {
        let renamed = rename_of.iter().find(|(o, _)| o == &attr.name);
        let include = attr.is_primary || renamed.is_some() || mentioned(&attr.name) || ellipsis;
        if !include {
            continue;
        }
        let mut a = attr.clone();
        if let Some((_, new)) = renamed {
            a.name = new.clone();
        }
        out.push(a);
    }
    for (name, expr) in computed {
        let datatype = scalar_type_in(expr, input, group)?;
        out.push(AttrInfo {
            name,
            datatype,
            lineage: Lineage::fresh_computed(),
            is_primary: false,
            nullable: true,
        });
    }
    // collision check
    let mut seen = BTreeSet::new();
    for a in &out {
        if !seen.insert(a.name.clone()) {
            if a.is_primary || rename_of.iter().any(|(_, n)| n == &a.name) {
                return Err(QueryError::PrimaryRenameCollision(a.name.clone()));
            }
            return Err(QueryError::DuplicateOutputName(a.name.clone()));
        }
    }
    Ok(RelationHeader {
        attrs: out,
        entity_type: input.entity_type.clone(),
    })
}

fn first_aggr_fn(expr: &ScalarExpr) -> String {
    match expr {
        ScalarExpr::Call { name, args } => {
            if AGGR_FNS.contains(&name.as_str()) {
                name.clone()
            } else {
                args.iter()
                    .find(|a| a.contains_aggr_call())
                    .map(first_aggr_fn)
                    .unwrap_or_default()
            }
        }
        ScalarExpr::Binary { left, right, .. } => {
            if left.contains_aggr_call() {
                first_aggr_fn(left)
            } else {
                first_aggr_fn(right)
            }
        }
        _ => String::new(),
    }
}

/// Attribute references with a flag for whether they appear inside an
/// aggregation call (those resolve against the aggregated operand).
fn attr_refs(expr: &ScalarExpr) -> Vec<(String, bool)> {
    fn walk(expr: &ScalarExpr, in_call: bool, out: &mut Vec<(String, bool)>) {
        match expr {
            ScalarExpr::Attr(a) => out.push((a.clone(), in_call)),
            ScalarExpr::Lit(_) => {}
            ScalarExpr::Binary { left, right, .. } => {
                walk(left, in_call, out);
                walk(right, in_call, out);
            }
            ScalarExpr::Call { name, args } => {
                let inside = in_call || AGGR_FNS.contains(&name.as_str());
                for a in args {
                    walk(a, inside, out);
                }
            }
        }
    }
    let mut out = Vec::new();
    walk(expr, false, &mut out);
    out
}

fn validate_condition(
    cond: &Condition,
    header: &RelationHeader,
    src: &dyn HeaderSource,
) -> Result<(), QueryError> {
    match cond {
        Condition::Cmp { left, op: _, right } => {
            for side in [left, right] {
                if side.contains_aggr_call() {
                    return Err(QueryError::AggrFnOutsideAggregate(first_aggr_fn(side)));
                }
                for (attr, _) in attr_refs(side) {
                    if header.find(&attr).is_none() {
                        return Err(QueryError::UnknownAttribute(attr));
                    }
                }
            }
            Ok(())
        }
        Condition::In { left, .. } => {
            for (attr, _) in attr_refs(left) {
                if header.find(&attr).is_none() {
                    return Err(QueryError::UnknownAttribute(attr));
                }
            }
            Ok(())
        }
        // unmatched mapping keys are ignored by design
        Condition::Mapping(_) => Ok(()),
        Condition::OrList(cs) | Condition::AndFn(cs) => {
            cs.iter().try_for_each(|c| validate_condition(c, header, src))
        }
        Condition::NotFn(c) => validate_condition(c, header, src),
        Condition::Subquery(e) => analyze(e, src).map(|_| ()),
    }
}

fn is_intlike(dt: &Datatype) -> bool {
    matches!(dt, Datatype::Int | Datatype::IntUnsigned | Datatype::Year)
}

fn is_numeric(dt: &Datatype) -> bool {
    is_intlike(dt) || matches!(dt, Datatype::Double | Datatype::Decimal(..))
}

fn is_stringlike(dt: &Datatype) -> bool {
    matches!(
        dt,
        Datatype::Char(_)
            | Datatype::Varchar(_)
            | Datatype::Date
            | Datatype::Datetime
            | Datatype::Enum(_)
    )
}

fn scalar_type_in(
    expr: &ScalarExpr,
    input: &RelationHeader,
    group: Option<&RelationHeader>,
) -> Result<Datatype, QueryError> {
    fn walk(
        expr: &ScalarExpr,
        input: &RelationHeader,
        group: Option<&RelationHeader>,
        in_call: bool,
    ) -> Result<Datatype, QueryError> {
        match expr {
            ScalarExpr::Attr(name) => {
                let source = if in_call { group.unwrap_or(input) } else { input };
                source
                    .find(name)
                    .map(|a| a.datatype.clone())
                    .ok_or_else(|| QueryError::UnknownAttribute(name.clone()))
            }
            ScalarExpr::Lit(Literal::Int(_)) => Ok(Datatype::Int),
            ScalarExpr::Lit(Literal::Double(_)) => Ok(Datatype::Double),
            ScalarExpr::Lit(Literal::Str(_)) => Ok(Datatype::Varchar(1024)),
            ScalarExpr::Lit(Literal::Null) => Ok(Datatype::Any),
            ScalarExpr::Binary { op, left, right } => {
                let lt = walk(left, input, group, in_call)?;
                let rt = walk(right, input, group, in_call)?;
                if lt.is_any() || rt.is_any() {
                    return Ok(Datatype::Any);
                }
                if is_stringlike(&lt) && is_stringlike(&rt) && *op == BinOp::Add {
                    return Ok(Datatype::Varchar(2048));
                }
                if !is_numeric(&lt) || !is_numeric(&rt) {
                    return Err(QueryError::TypeMismatch(format!(
                        "{} {} {}",
                        lt,
                        op.symbol(),
                        rt
                    )));
                }
                if *op == BinOp::Div {
                    return Ok(Datatype::Double);
                }
                if is_intlike(&lt) && is_intlike(&rt) {
                    Ok(Datatype::Int)
                } else {
                    Ok(Datatype::Double)
                }
            }
            ScalarExpr::Call { name, args } => {
                if !AGGR_FNS.contains(&name.as_str()) {
                    return Err(QueryError::UnknownFunction(name.clone()));
                }
                match name.as_str() {
                    "count" => Ok(Datatype::Int),
                    "avg" | "median" | "percentile" | "stddev" | "var" => Ok(Datatype::Double),
                    "sum" => {
                        let arg = args.first().ok_or_else(|| {
                            QueryError::TypeMismatch("sum() needs an argument".into())
                        })?;
                        let t = walk(arg, input, group, true)?;
                        if is_intlike(&t) {
                            Ok(Datatype::Int)
                        } else {
                            Ok(Datatype::Double)
                        }
                    }
                    "min" | "max" => {
                        let arg = args.first().ok_or_else(|| {
                            QueryError::TypeMismatch("min/max needs an argument".into())
                        })?;
                        walk(arg, input, group, true)
                    }
                    _ => Ok(Datatype::Double),
                }
            }
        }
    }
    walk(expr, input, group, false)
}

/// Datatype of a scalar expression over a single header.
pub fn scalar_type(expr: &ScalarExpr, header: &RelationHeader) -> Result<Datatype, QueryError> {
    scalar_type_in(expr, header, None)
}
