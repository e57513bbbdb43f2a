//! Canonical text rendering of query ASTs. `parse_query(print_query(e))`
//! reproduces `e` structurally.

use crate::lang::ast::*;

pub fn print_query(expr: &QueryExpr) -> String {
    print_union_level(expr)
}

fn print_union_level(expr: &QueryExpr) -> String {
    match expr {
        QueryExpr::Union(a, b) => {
            format!("{} + {}", union_operand(a, true), union_operand(b, false))
        }
        _ => print_restrict_level(expr),
    }
}

/// A union operand. Restrictions are parenthesized: a trailing scalar
/// condition would otherwise swallow the `+` as arithmetic.
fn union_operand(expr: &QueryExpr, left: bool) -> String {
    match expr {
        QueryExpr::Restrict { .. } => format!("({})", print_union_level(expr)),
        _ if left => print_union_level(expr),
        _ => print_restrict_level(expr),
    }
}

fn print_restrict_level(expr: &QueryExpr) -> String {
    match expr {
        QueryExpr::Restrict {
            input,
            cond,
            exclude,
        } => {
            let op = if *exclude { "\\" } else { "&" };
            format!(
                "{} {} {}",
                print_restrict_level(input),
                op,
                print_condition(cond)
            )
        }
        QueryExpr::Union(..) => format!("({})", print_union_level(expr)),
        _ => print_join_level(expr),
    }
}

fn print_join_level(expr: &QueryExpr) -> String {
    match expr {
        QueryExpr::Join(a, b) => format!("{} * {}", print_join_level(a), print_postfix(b)),
        QueryExpr::Restrict { .. } | QueryExpr::Union(..) => {
            format!("({})", print_union_level(expr))
        }
        _ => print_postfix(expr),
    }
}

fn print_postfix(expr: &QueryExpr) -> String {
    match expr {
        QueryExpr::Project {
            input,
            items,
            ellipsis,
        } => {
            let mut args: Vec<String> = items.iter().map(print_proj_item).collect();
            if *ellipsis {
                args.push("...".into());
            }
            format!("{}.proj({})", print_postfix(input), args.join(", "))
        }
        QueryExpr::Aggregate {
            input,
            group,
            items,
        } => {
            let mut args = vec![print_query(group)];
            args.extend(items.iter().map(print_proj_item));
            format!("{}.aggr({})", print_postfix(input), args.join(", "))
        }
        QueryExpr::Base(name) => name.clone(),
        QueryExpr::Universal(attrs) => format!("U({})", attrs.join(", ")),
        _ => format!("({})", print_union_level(expr)),
    }
}

fn print_proj_item(item: &ProjItem) -> String {
    match item {
        ProjItem::Keep(name) => name.clone(),
        ProjItem::Rename { new, old } => format!("{new}: {old}"),
        ProjItem::Compute { name, expr } => format!("{name}: {}", print_scalar(expr)),
    }
}

pub fn print_condition(cond: &Condition) -> String {
    match cond {
        Condition::Cmp { left, op, right } => format!(
            "{} {} {}",
            print_scalar(left),
            op.symbol(),
            print_scalar(right)
        ),
        Condition::In { left, list } => {
            let items: Vec<String> = list.iter().map(print_literal).collect();
            format!("{} in [{}]", print_scalar(left), items.join(", "))
        }
        Condition::Mapping(pairs) => {
            let items: Vec<String> = pairs
                .iter()
                .map(|(k, v)| format!("{k}: {}", print_literal(v)))
                .collect();
            format!("{{{}}}", items.join(", "))
        }
        Condition::OrList(conds) => {
            let items: Vec<String> = conds.iter().map(print_condition).collect();
            format!("[{}]", items.join(", "))
        }
        Condition::AndFn(conds) => {
            let items: Vec<String> = conds.iter().map(print_condition).collect();
            format!("And([{}])", items.join(", "))
        }
        Condition::NotFn(c) => format!("Not({})", print_condition(c)),
        Condition::Subquery(e) => match e {
            QueryExpr::Base(_) | QueryExpr::Universal(_) => print_query(e),
            // joins and postfix chains would re-parse at join level, but the
            // parenthesized form is canonical
            _ => format!("({})", print_query(e)),
        },
    }
}

pub fn print_scalar(expr: &ScalarExpr) -> String {
    match expr {
        ScalarExpr::Attr(a) => a.clone(),
        ScalarExpr::Lit(l) => print_literal(l),
        ScalarExpr::Binary { op, left, right } => format!(
            "({} {} {})",
            print_scalar(left),
            op.symbol(),
            print_scalar(right)
        ),
        ScalarExpr::Call { name, args } => {
            let items: Vec<String> = args.iter().map(print_scalar).collect();
            format!("{name}({})", items.join(", "))
        }
    }
}

pub fn print_literal(lit: &Literal) -> String {
    match lit {
        Literal::Int(i) => i.to_string(),
        Literal::Double(d) => {
            if d.fract() == 0.0 && d.is_finite() {
                format!("{d:.1}")
            } else {
                d.to_string()
            }
        }
        Literal::Str(s) => format!("\"{s}\""),
        Literal::Null => "null".into(),
    }
}
