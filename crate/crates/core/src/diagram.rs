//! Schema diagrams as DOT graph text.
//!
//! Entity sets are boxed nodes (parts unboxed), ranked bottom-to-top so
//! every dependency points upward. Primary dependencies draw solid edges,
//! secondary ones dashed; an edge thickens when the dependent introduces no
//! primary key of its own beyond its single primary dependency. Projection
//! targets appear as intermediate orange nodes; restrictions collapse onto
//! the underlying entity set; joins and unions fan out into one edge per
//! operand.

use std::collections::HashSet;
use std::fmt::Write;

use crate::catalog::{strip_restrictions, Catalog, EntitySpec};
use crate::lang::ast::{ProjItem, QueryExpr};
use crate::lang::printer::print_query;

fn node_id(name: &str) -> String {
    name.replace('.', "__")
}

/// Resolved rendering targets of one dependency expression.
enum EdgeTarget {
    Entity(String),
    /// A projection with renames or computed attributes: an intermediate
    /// node with the projection text, attached to the underlying set.
    Projection { label: String, base: String },
}

fn edge_targets(expr: &QueryExpr, out: &mut Vec<EdgeTarget>) {
    match expr {
        QueryExpr::Base(name) => out.push(EdgeTarget::Entity(name.clone())),
        QueryExpr::Restrict { input, .. } => edge_targets(input, out),
        QueryExpr::Join(a, b) | QueryExpr::Union(a, b) => {
            edge_targets(a, out);
            edge_targets(b, out);
        }
        QueryExpr::Project { input, items, .. } => {
            let relabels = items
                .iter()
                .any(|i| !matches!(i, ProjItem::Keep(_)));
            if relabels {
                let mut bases = Vec::new();
                expr_first_base(input, &mut bases);
                if let Some(base) = bases.first() {
                    out.push(EdgeTarget::Projection {
                        label: print_query(&strip_restrictions(expr)),
                        base: base.clone(),
                    });
                }
            } else {
                edge_targets(input, out);
            }
        }
        QueryExpr::Aggregate { input, .. } => edge_targets(input, out),
        QueryExpr::Universal(_) => {}
    }
}

fn expr_first_base(expr: &QueryExpr, out: &mut Vec<String>) {
    expr.base_refs(out);
}

/// True when the dependent's primary key is exactly its single primary
/// dependency's key: no distinguishing primary attributes of its own.
fn same_primary_key(spec: &EntitySpec) -> bool {
    let primary_deps = spec.deps.iter().filter(|d| d.in_primary).count();
    primary_deps == 1
        && spec
            .attrs
            .iter()
            .filter(|a| a.is_primary)
            .all(|a| a.from_dependency)
}

pub fn emit_dot(catalog: &Catalog) -> String {
    let mut dot = String::new();
    writeln!(dot, "digraph schema {{").unwrap();
    writeln!(dot, "  rankdir=BT;").unwrap();
    writeln!(dot, "  node [shape=box, fontname=\"Helvetica\"];").unwrap();
    for spec in catalog.entities() {
        let id = node_id(&spec.name);
        if spec.master.is_some() {
            writeln!(
                dot,
                "  {id} [label=\"{}\", shape=plaintext];",
                spec.name
            )
            .unwrap();
        } else {
            writeln!(dot, "  {id} [label=\"{}\"];", spec.name).unwrap();
        }
    }
    let mut proj_count = 0usize;
    let mut emitted: HashSet<(String, String)> = HashSet::new();
    for spec in catalog.entities() {
        let from = node_id(&spec.name);
        let thick = same_primary_key(spec);
        for dep in &spec.deps {
            let style = if dep.in_primary {
                if thick {
                    "style=solid, penwidth=2.5"
                } else {
                    "style=solid"
                }
            } else {
                "style=dashed"
            };
            let mut targets = Vec::new();
            edge_targets(&strip_restrictions(&dep.target), &mut targets);
            for target in targets {
                match target {
                    EdgeTarget::Entity(name) => {
                        let to = node_id(&name);
                        if emitted.insert((from.clone(), to.clone())) {
                            writeln!(dot, "  {from} -> {to} [{style}];").unwrap();
                        }
                    }
                    EdgeTarget::Projection { label, base } => {
                        proj_count += 1;
                        let pid = format!("proj{proj_count}");
                        writeln!(
                            dot,
                            "  {pid} [label=\"{}\", shape=plaintext, fontcolor=orange];",
                            label.replace('"', "\\\"")
                        )
                        .unwrap();
                        writeln!(dot, "  {from} -> {pid} [{style}];").unwrap();
                        writeln!(dot, "  {pid} -> {} [style=solid];", node_id(&base)).unwrap();
                    }
                }
            }
        }
    }
    writeln!(dot, "}}").unwrap();
    dot
}
