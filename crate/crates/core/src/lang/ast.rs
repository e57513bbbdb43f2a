//! Syntax trees for declarations, manipulations, and query expressions.

use serde::{Deserialize, Serialize};

use crate::value::{Datatype, Value};

/// A literal appearing in source text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Literal {
    Int(i64),
    Double(f64),
    Str(String),
    Null,
}

impl Literal {
    pub fn to_value(&self) -> Value {
        match self {
            Literal::Int(i) => Value::Int(*i),
            Literal::Double(d) => Value::Double(*d),
            Literal::Str(s) => Value::Str(s.clone()),
            Literal::Null => Value::Null,
        }
    }
}

/// One attribute line of an entity declaration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttrDeclItem {
    pub name: String,
    pub datatype: Datatype,
    pub default: Option<Literal>,
    pub comment: Option<String>,
}

/// Target of a `->` dependency line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DepTarget {
    /// The `master` keyword, legal only in part declarations.
    Master,
    Expr(QueryExpr),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependencyDeclItem {
    pub unique: bool,
    pub nullable: bool,
    pub target: DepTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DeclItem {
    Attr(AttrDeclItem),
    Dependency(DependencyDeclItem),
}

/// A `::Name` entity declaration. `name` is the full name, possibly the
/// part form `Master.Part`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityDecl {
    pub name: String,
    pub primary_items: Vec<DeclItem>,
    pub secondary_items: Vec<DeclItem>,
    pub has_divider: bool,
}

impl EntityDecl {
    pub fn master_name(&self) -> Option<&str> {
        self.name.split_once('.').map(|(m, _)| m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(&self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }
}

/// Scalar expression: attribute references, literals, arithmetic, and
/// function calls (aggregation functions are only valid inside aggr items).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScalarExpr {
    Attr(String),
    Lit(Literal),
    Binary {
        op: BinOp,
        left: Box<ScalarExpr>,
        right: Box<ScalarExpr>,
    },
    Call {
        name: String,
        args: Vec<ScalarExpr>,
    },
}

pub const AGGR_FNS: &[&str] = &[
    "count",
    "sum",
    "min",
    "max",
    "avg",
    "median",
    "percentile",
    "stddev",
    "var",
];

impl ScalarExpr {
    /// Attribute names referenced anywhere in the expression.
    pub fn attrs(&self, out: &mut Vec<String>) {
        match self {
            ScalarExpr::Attr(a) => out.push(a.clone()),
            ScalarExpr::Lit(_) => {}
            ScalarExpr::Binary { left, right, .. } => {
                left.attrs(out);
                right.attrs(out);
            }
            ScalarExpr::Call { args, .. } => {
                for a in args {
                    a.attrs(out);
                }
            }
        }
    }

    pub fn contains_aggr_call(&self) -> bool {
        match self {
            ScalarExpr::Attr(_) | ScalarExpr::Lit(_) => false,
            ScalarExpr::Binary { left, right, .. } => {
                left.contains_aggr_call() || right.contains_aggr_call()
            }
            ScalarExpr::Call { name, args } => {
                AGGR_FNS.contains(&name.as_str()) || args.iter().any(|a| a.contains_aggr_call())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(&self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn negate(&self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Ne,
            CmpOp::Ne => CmpOp::Eq,
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Le => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Le,
            CmpOp::Ge => CmpOp::Lt,
        }
    }
}

/// Restriction condition tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Condition {
    Cmp {
        left: ScalarExpr,
        op: CmpOp,
        right: ScalarExpr,
    },
    In {
        left: ScalarExpr,
        list: Vec<Literal>,
    },
    /// `{key: value, ...}`; keys that are not attributes of the operand are
    /// ignored.
    Mapping(Vec<(String, Literal)>),
    /// `[c1, ..., cN]`: disjunction. Empty list is FALSE.
    OrList(Vec<Condition>),
    /// `And([c1, ..., cN])`: conjunction. Empty list is TRUE.
    AndFn(Vec<Condition>),
    NotFn(Box<Condition>),
    /// Restriction by an entity set.
    Subquery(QueryExpr),
}

/// Projection/aggregation output item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ProjItem {
    /// Keep an existing attribute by name.
    Keep(String),
    /// `new: old` rename; lineage is preserved.
    Rename { new: String, old: String },
    /// `name: expr` calculated attribute; always secondary, fresh lineage.
    /// Inside `aggr` the expression may contain aggregation calls.
    Compute { name: String, expr: ScalarExpr },
}

/// Query expression over the five operators plus universal sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum QueryExpr {
    Base(String),
    Restrict {
        input: Box<QueryExpr>,
        cond: Box<Condition>,
        /// false: `&` (keep matches); true: `\` (keep non-matches).
        exclude: bool,
    },
    Join(Box<QueryExpr>, Box<QueryExpr>),
    Project {
        input: Box<QueryExpr>,
        items: Vec<ProjItem>,
        ellipsis: bool,
    },
    Aggregate {
        input: Box<QueryExpr>,
        group: Box<QueryExpr>,
        items: Vec<ProjItem>,
    },
    Union(Box<QueryExpr>, Box<QueryExpr>),
    Universal(Vec<String>),
}

impl QueryExpr {
    pub fn restrict(self, cond: Condition, exclude: bool) -> QueryExpr {
        QueryExpr::Restrict {
            input: Box::new(self),
            cond: Box::new(cond),
            exclude,
        }
    }

    /// Base entity-set names mentioned anywhere in the expression.
    pub fn base_refs(&self, out: &mut Vec<String>) {
        match self {
            QueryExpr::Base(n) => out.push(n.clone()),
            QueryExpr::Restrict { input, cond, .. } => {
                input.base_refs(out);
                cond.base_refs(out);
            }
            QueryExpr::Join(a, b) | QueryExpr::Union(a, b) => {
                a.base_refs(out);
                b.base_refs(out);
            }
            QueryExpr::Project { input, .. } => input.base_refs(out),
            QueryExpr::Aggregate { input, group, .. } => {
                input.base_refs(out);
                group.base_refs(out);
            }
            QueryExpr::Universal(_) => {}
        }
    }
}

impl Condition {
    pub fn base_refs(&self, out: &mut Vec<String>) {
        match self {
            Condition::Subquery(e) => e.base_refs(out),
            Condition::OrList(cs) | Condition::AndFn(cs) => {
                for c in cs {
                    c.base_refs(out);
                }
            }
            Condition::NotFn(c) => c.base_refs(out),
            _ => {}
        }
    }
}

/// Data-manipulation statements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Manipulation {
    Insert {
        entity: String,
        attrs: Vec<String>,
        rows: Vec<Vec<Literal>>,
    },
    Delete {
        entity: String,
        cond: Condition,
    },
    Update {
        entity: String,
        cond: Condition,
        assignments: Vec<(String, Literal)>,
    },
    Populate {
        entity: String,
        /// Declarative make: computed secondary attributes over the
        /// upstream join of the primary dependency targets.
        make: Vec<(String, ScalarExpr)>,
    },
}

/// One parsed script statement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Statement {
    Decl(EntityDecl),
    Manip(Manipulation),
    Query(QueryExpr),
    /// `Name = expr`: bind a query expression to a variable for reuse.
    Assign(String, QueryExpr),
}
