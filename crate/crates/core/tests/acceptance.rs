//! End-to-end acceptance suite. Each test prints one PASS/FAIL line for its
//! criterion (visible with `--nocapture`); a FAIL also fails the test.

mod common;

use std::collections::BTreeMap;
use std::panic::AssertUnwindSafe;
use std::time::Instant;

use djengine::algebra::eval;
use djengine::compute::{MakeRegistry, MakeResult, populate};
use djengine::error::StoreError;
use djengine::lang::ast::{
    CmpOp, Condition, Literal, Manipulation, QueryExpr, ScalarExpr, Statement,
};
use djengine::lang::parser::{parse_query, parse_script};
use djengine::transpile::{ddl_to_sql, manipulation_to_sql, query_to_sql, Dialect, SqlOptions};
use djengine::value::Value;
use djengine::Store;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use common::{
    check_query, engine_rows, load_store, oracle_eval, university_store, ORow, ORDER_SCHEMA,
    UNIVERSITY,
};

fn criterion(n: usize, name: &str, f: impl FnOnce()) {
    let start = Instant::now();
    let result = std::panic::catch_unwind(AssertUnwindSafe(f));
    match &result {
        Ok(()) => println!(
            "criterion {n} ({name}): PASS [{} ms]",
            start.elapsed().as_millis()
        ),
        Err(_) => println!("criterion {n} ({name}): FAIL"),
    }
    if let Err(e) = result {
        std::panic::resume_unwind(e);
    }
}

// ---------------------------------------------------------------------------
// 1. Schema fidelity
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_schema_fidelity() {
    criterion(1, "schema fidelity", || {
        let store = university_store();
        let catalog = store.catalog();

        // (attribute name, primary?) per table, in declaration order
        let expected: &[(&str, &[(&str, bool)], &[(&str, &[&str])])] = &[
            (
                "Student",
                &[
                    ("student_id", true),
                    ("first_name", false),
                    ("last_name", false),
                    ("sex", false),
                    ("date_of_birth", false),
                    ("home_address", false),
                    ("home_city", false),
                    ("home_state", false),
                    ("home_zipcode", false),
                    ("home_phone", false),
                ],
                &[],
            ),
            (
                "Department",
                &[
                    ("dept", true),
                    ("dept_name", false),
                    ("dept_address", false),
                    ("dept_phone", false),
                ],
                &[],
            ),
            (
                "StudentMajor",
                &[
                    ("student_id", true),
                    ("dept", false),
                    ("declare_date", false),
                ],
                &[("Student", &["student_id"]), ("Department", &["dept"])],
            ),
            (
                "Course",
                &[
                    ("dept", true),
                    ("course", true),
                    ("course_name", false),
                    ("credits", false),
                ],
                &[("Department", &["dept"])],
            ),
            ("Term", &[("term_year", true), ("term", true)], &[]),
            (
                "Section",
                &[
                    ("dept", true),
                    ("course", true),
                    ("term_year", true),
                    ("term", true),
                    ("section", true),
                    ("room", false),
                ],
                &[
                    ("Course", &["dept", "course"]),
                    ("Term", &["term_year", "term"]),
                ],
            ),
            (
                "CurrentTerm",
                &[("term_year", false), ("term", false)],
                &[("Term", &["term_year", "term"])],
            ),
            (
                "Enroll",
                &[
                    ("dept", true),
                    ("course", true),
                    ("term_year", true),
                    ("term", true),
                    ("section", true),
                    ("student_id", true),
                ],
                &[
                    (
                        "Section",
                        &["dept", "course", "term_year", "term", "section"],
                    ),
                    ("Student", &["student_id"]),
                ],
            ),
            ("LetterGrade", &[("grade", true), ("points", false)], &[]),
            (
                "Grade",
                &[
                    ("dept", true),
                    ("course", true),
                    ("term_year", true),
                    ("term", true),
                    ("section", true),
                    ("student_id", true),
                    ("grade", false),
                ],
                &[
                    (
                        "Enroll",
                        &["dept", "course", "term_year", "term", "section", "student_id"],
                    ),
                    ("LetterGrade", &["grade"]),
                ],
            ),
        ];

        assert_eq!(catalog.entities().len(), expected.len());
        for (name, attrs, fks) in expected {
            let spec = catalog.get(name).unwrap_or_else(|| panic!("missing {name}"));
            let got: Vec<(String, bool)> = spec
                .attrs
                .iter()
                .map(|a| (a.name.clone(), a.is_primary))
                .collect();
            let want: Vec<(String, bool)> = attrs
                .iter()
                .map(|(n, p)| (n.to_string(), *p))
                .collect();
            assert_eq!(got, want, "attribute mismatch in {name}");
            // every attribute declared NOT NULL (no nullable defaults here)
            assert!(
                spec.attrs.iter().all(|a| !a.nullable),
                "unexpected nullable attribute in {name}"
            );
            let got_fks: Vec<(String, Vec<String>)> = spec
                .deps
                .iter()
                .map(|d| {
                    let QueryExpr::Base(target) = &d.target else {
                        panic!("unexpected derived dependency in {name}");
                    };
                    (target.clone(), d.fk_attrs.clone())
                })
                .collect();
            let want_fks: Vec<(String, Vec<String>)> = fks
                .iter()
                .map(|(t, cols)| (t.to_string(), cols.iter().map(|c| c.to_string()).collect()))
                .collect();
            assert_eq!(got_fks, want_fks, "dependency mismatch in {name}");
        }
        // CurrentTerm holds at most one element: empty primary key
        assert!(catalog.get("CurrentTerm").unwrap().is_singleton());
    });
}

// ---------------------------------------------------------------------------
// 2. Query-suite oracle equivalence
// ---------------------------------------------------------------------------

const QUERY_CORPUS: &[&str] = &[
    // restrictions by attribute conditions
    r#"Student & home_state == "TX""#,
    r#"Student & home_state <> "TX""#,
    r#"Student \ home_state == "TX""#,
    r#"Student & sex == "M" \ home_state == "TX""#,
    // assignment-expanded variables
    r#"Student & date_of_birth >= "1980-01-01" & date_of_birth < "2001-01-01""#,
    r#"(Student & date_of_birth >= "1980-01-01" & date_of_birth < "2001-01-01") & sex == "M""#,
    // restriction by a key-value mapping
    r#"Student & {first_name: "Alice", last_name: "Cooper", dept: "MATH"}"#,
    r#"Student & first_name == "Alice" & last_name == "Cooper""#,
    r#"Student & {}"#,
    r#"Student & {dept: "MATH"}"#,
    r#"Student \ {}"#,
    r#"Student \ {dept: "MATH"}"#,
    // restriction by a collection
    r#"Student & [home_state == "OK", home_state == "NM", home_state == "TX"]"#,
    r#"Student & home_state in ["OK", "NM", "TX"]"#,
    // restriction by an entity set
    "Student & Enroll",
    r"Student \ Enroll",
    r"Student \ StudentMajor",
    // composite restrictions
    r#"Student & (Enroll & dept == "BIOL") \ (Enroll & dept == "MATH")"#,
    r"Student \ (Enroll & CurrentTerm)",
    "Student & Enroll & StudentMajor",
    "Student & (Enroll & StudentMajor)",
    r"Student & (Enroll \ StudentMajor & CurrentTerm)",
    "Student & [Enroll, StudentMajor]",
    // joins
    "Grade * LetterGrade",
    "Student * Enroll * Course * Section * Grade * LetterGrade",
    r"Student & (Enroll * CurrentTerm \ Grade)",
    "Student * Enroll & (term_year <= date_of_birth)",
    // attribute selection
    "Student.proj(first_name, last_name)",
    "Student.proj()",
    // renames
    "StudentMajor.proj(major: dept)",
    "Enroll & StudentMajor",
    "Enroll & StudentMajor.proj(major: dept)",
    "Grade * StudentMajor",
    "Grade * StudentMajor.proj(major: dept)",
    "Grade * StudentMajor.proj(major: dept) & major != dept",
    // self-join with renames: pairs of students sharing a birthday
    "Student * Student.proj(student_id2: student_id, date_of_birth2: date_of_birth) & student_id < student_id2 & date_of_birth = date_of_birth2",
    // calculated attributes
    "(Grade * Course * LetterGrade).proj(total: points * credits)",
    "(Course * Grade * LetterGrade).proj(course_name, total: points * credits) & CurrentTerm",
    // aggregation
    "Section.aggr(Enroll, n: count())",
    "Course.aggr(Grade * LetterGrade, avg_grade: avg(points))",
    "Section.aggr(Grade, m: count())",
    "(Section.aggr(Enroll, n: count()) * Section.aggr(Grade, m: count())).proj(frac: m / n)",
    "Student.aggr(Course * Grade * LetterGrade, gpa: sum(points * credits) / sum(credits))",
    "Department.aggr(StudentMajor * Student.aggr(Course * Grade * LetterGrade, gpa: sum(points * credits) / sum(credits)), avg_gpa: avg(gpa))",
    "Student.aggr(Course * Grade * LetterGrade & CurrentTerm, gpa: sum(points * credits) / sum(credits))",
    // universal sets
    "U(home_city, home_state) & Student",
    "U(home_city, home_state).aggr(Student, n: count())",
    "U(home_state).aggr(Student, n: count())",
    "U().aggr(Student, n: count())",
];

#[test]
fn criterion_2_query_suite_oracle_equivalence() {
    criterion(2, "query-suite oracle equivalence", || {
        let store = university_store();
        for q in QUERY_CORPUS {
            check_query(&store, q);
        }
        assert!(QUERY_CORPUS.len() >= 35);
    });
}

// ---------------------------------------------------------------------------
// 3. Algebraic property suite
// ---------------------------------------------------------------------------

const LAW_SCHEMA: &str = "
::P
p : int
---
s : int
t : varchar(8)

::Q
-> P
q : int
---
u : int

::R
-> P
---
w : int
";

fn random_law_store(rng: &mut ChaCha8Rng) -> Store {
    let mut store = Store::new();
    for stmt in parse_script(LAW_SCHEMA).unwrap() {
        if let Statement::Decl(d) = stmt {
            store.declare(&d).unwrap();
        }
    }
    let strings = ["ab", "cd", "ef"];
    let np = rng.gen_range(1..=7usize);
    let p_rows: Vec<Vec<Value>> = (0..np)
        .map(|i| {
            vec![
                Value::Int(i as i64),
                Value::Int(rng.gen_range(0..5)),
                Value::Str(strings.choose(rng).unwrap().to_string()),
            ]
        })
        .collect();
    store.insert("P", &[], &p_rows).unwrap();
    let mut q_rows = Vec::new();
    for i in 0..np {
        for q in 0..3i64 {
            if rng.gen_bool(0.4) {
                q_rows.push(vec![
                    Value::Int(i as i64),
                    Value::Int(q),
                    Value::Int(rng.gen_range(0..4)),
                ]);
            }
        }
    }
    store.insert("Q", &[], &q_rows).unwrap();
    let mut r_rows = Vec::new();
    for i in 0..np {
        if rng.gen_bool(0.5) {
            r_rows.push(vec![Value::Int(i as i64), Value::Int(rng.gen_range(0..4))]);
        }
    }
    store.insert("R", &[], &r_rows).unwrap();
    store
}

/// A random restriction condition over the attributes of `P`.
fn random_cond(rng: &mut ChaCha8Rng, depth: usize) -> Condition {
    let ops = [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge];
    let pick = if depth == 0 {
        rng.gen_range(0..4)
    } else {
        rng.gen_range(0..7)
    };
    match pick {
        0 => Condition::Cmp {
            left: ScalarExpr::Attr("p".into()),
            op: *ops.choose(rng).unwrap(),
            right: ScalarExpr::Lit(Literal::Int(rng.gen_range(0..7))),
        },
        1 => Condition::Cmp {
            left: ScalarExpr::Attr("s".into()),
            op: *ops.choose(rng).unwrap(),
            right: ScalarExpr::Lit(Literal::Int(rng.gen_range(0..5))),
        },
        2 => Condition::In {
            left: ScalarExpr::Attr("t".into()),
            list: vec![Literal::Str("ab".into()), Literal::Str("ef".into())],
        },
        3 => Condition::Mapping(vec![
            ("s".into(), Literal::Int(rng.gen_range(0..5))),
            ("nonexistent".into(), Literal::Str("ignored".into())),
        ]),
        4 => Condition::Subquery(parse_query("Q").unwrap()),
        5 => Condition::NotFn(Box::new(random_cond(rng, depth - 1))),
        _ => Condition::OrList(vec![
            random_cond(rng, depth - 1),
            random_cond(rng, depth - 1),
        ]),
    }
}

fn rows_of(store: &Store, expr: &QueryExpr) -> Vec<ORow> {
    engine_rows(&eval(expr, store).expect("law query evaluates"))
}

fn same_rows(store: &Store, a: &QueryExpr, b: &QueryExpr, label: &str) {
    let mut xa = rows_of(store, a);
    let mut xb = rows_of(store, b);
    let key = |r: &ORow| format!("{r:?}");
    xa.sort_by_key(key);
    xb.sort_by_key(key);
    assert_eq!(xa, xb, "law violated: {label}");
}

/// Entity-normalization audit on a query result: no null primary key
/// values and no duplicate primary keys.
fn normalized(store: &Store, expr: &QueryExpr) {
    let rel = eval(expr, store).expect("evaluates");
    let pk: Vec<usize> = rel
        .header
        .attrs
        .iter()
        .enumerate()
        .filter(|(_, a)| a.is_primary)
        .map(|(i, _)| i)
        .collect();
    let mut seen = std::collections::HashSet::new();
    for row in &rel.rows {
        let key: Vec<String> = pk.iter().map(|&i| format!("{:?}", row[i])).collect();
        assert!(
            pk.iter().all(|&i| !row[i].is_null()),
            "null primary key value in result"
        );
        assert!(seen.insert(key), "duplicate primary key in result");
    }
}

#[test]
fn criterion_3_algebraic_properties() {
    criterion(3, "algebraic property suite", || {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let p = || parse_query("P").unwrap();
        for _ in 0..1000 {
            let store = random_law_store(&mut rng);
            let c1 = random_cond(&mut rng, 1);
            let c2 = random_cond(&mut rng, 1);

            // De Morgan: excluding a disjunction excludes each in turn
            same_rows(
                &store,
                &p().restrict(Condition::OrList(vec![c1.clone(), c2.clone()]), true),
                &p().restrict(c1.clone(), true).restrict(c2.clone(), true),
                "A \\ [a, b] = A \\ a \\ b",
            );
            // De Morgan: excluding a conjunction keeps either negation
            same_rows(
                &store,
                &p().restrict(Condition::AndFn(vec![c1.clone(), c2.clone()]), true),
                &p().restrict(
                    Condition::OrList(vec![
                        Condition::NotFn(Box::new(c1.clone())),
                        Condition::NotFn(Box::new(c2.clone())),
                    ]),
                    false,
                ),
                "A \\ And([a, b]) = A & [Not(a), Not(b)]",
            );
            // restriction partitions its input
            same_rows(
                &store,
                &QueryExpr::Union(
                    Box::new(p().restrict(c1.clone(), false)),
                    Box::new(p().restrict(c1.clone(), true)),
                ),
                &p(),
                "(A & c) + (A \\ c) = A",
            );
            // empty-condition identities
            same_rows(
                &store,
                &p().restrict(Condition::Mapping(vec![]), false),
                &p(),
                "A & {} = A",
            );
            assert!(
                rows_of(&store, &p().restrict(Condition::Mapping(vec![]), true)).is_empty(),
                "A \\ {{}} should be empty"
            );
            assert!(
                rows_of(&store, &p().restrict(Condition::OrList(vec![]), false)).is_empty(),
                "A & [] should be empty"
            );
            same_rows(
                &store,
                &p().restrict(Condition::AndFn(vec![]), false),
                &p(),
                "A & And([]) = A",
            );
            same_rows(
                &store,
                &p().restrict(Condition::OrList(vec![]), true),
                &p(),
                "A \\ [] = A",
            );

            // join laws
            let q = parse_query("Q").unwrap();
            let r = parse_query("R").unwrap();
            same_rows(
                &store,
                &QueryExpr::Join(Box::new(p()), Box::new(q.clone())),
                &QueryExpr::Join(Box::new(q.clone()), Box::new(p())),
                "A * B = B * A",
            );
            same_rows(
                &store,
                &QueryExpr::Join(
                    Box::new(QueryExpr::Join(Box::new(p()), Box::new(q.clone()))),
                    Box::new(r.clone()),
                ),
                &QueryExpr::Join(
                    Box::new(p()),
                    Box::new(QueryExpr::Join(Box::new(q.clone()), Box::new(r.clone()))),
                ),
                "(A * B) * C = A * (B * C)",
            );
            same_rows(
                &store,
                &QueryExpr::Join(Box::new(p()), Box::new(p())),
                &p(),
                "A * A = A",
            );

            // projection and aggregation preserve cardinality
            let n_p = rows_of(&store, &p()).len();
            assert_eq!(
                rows_of(&store, &parse_query("P.proj(s)").unwrap()).len(),
                n_p
            );
            assert_eq!(
                rows_of(&store, &parse_query("P.proj(x: s + 1)").unwrap()).len(),
                n_p
            );
            assert_eq!(
                rows_of(&store, &parse_query("P.aggr(Q, n: count())").unwrap()).len(),
                n_p
            );

            // every result is a well-formed entity set
            normalized(&store, &p().restrict(c1.clone(), false));
            normalized(&store, &QueryExpr::Join(Box::new(p()), Box::new(q.clone())));
            normalized(&store, &parse_query("P.aggr(Q, n: count())").unwrap());
            normalized(
                &store,
                &parse_query("Q.proj(qq: q, su: u + 1)").unwrap(),
            );
        }
    });
}

// ---------------------------------------------------------------------------
// 4. Integrity workload
// ---------------------------------------------------------------------------

fn str_v(s: &str) -> Value {
    Value::Str(s.to_string())
}

#[test]
fn criterion_4_integrity_workload() {
    criterion(4, "integrity workload", || {
        let mut store = load_store(ORDER_SCHEMA);
        let customers = ["alice", "bob", "carol"];
        let products = ["apple", "banana", "cherry", "dates"];
        for c in customers {
            store
                .insert(
                    "Customer",
                    &[],
                    &[vec![str_v(c), str_v(&format!("{c} inc")), str_v("1 main st")]],
                )
                .unwrap();
        }
        for p in products {
            store
                .insert(
                    "Product",
                    &[],
                    &[vec![str_v(p), str_v(&format!("{p} brand")), str_v("tasty")]],
                )
                .unwrap();
        }

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut live_orders: Vec<i64> = Vec::new();
        let mut next_order = 0i64;
        let mut next_item = 0i64;
        let part_attrs: Vec<String> = ["order", "item", "product", "unit", "price", "quantity"]
            .iter()
            .map(|s| s.to_string())
            .collect();

        for step in 0..200 {
            match rng.gen_range(0..10) {
                // insert an order with 0-3 items in one transaction
                0..=2 => {
                    let order = next_order;
                    next_order += 1;
                    let n_items = rng.gen_range(0..=3);
                    let items: Vec<Vec<Value>> = (0..n_items)
                        .map(|_| {
                            next_item += 1;
                            vec![
                                Value::Int(order),
                                Value::Int(next_item),
                                str_v(products.choose(&mut rng).unwrap()),
                                str_v("each"),
                                Value::Double(1.25),
                                Value::Double(2.0),
                            ]
                        })
                        .collect();
                    store
                        .insert_master(
                            "Order",
                            &[],
                            &[vec![
                                Value::Int(order),
                                str_v(customers.choose(&mut rng).unwrap()),
                                str_v("2024-01-01 10:00:00"),
                            ]],
                            &[("Order.Item".to_string(), part_attrs.clone(), items)],
                        )
                        .unwrap();
                    live_orders.push(order);
                }
                // ship a random order
                3 => {
                    if let Some(&order) = live_orders.as_slice().choose(&mut rng) {
                        if eval(
                            &parse_query(&format!("Shipment & order == {order}")).unwrap(),
                            &store,
                        )
                        .unwrap()
                        .rows
                        .is_empty()
                        {
                            store
                                .insert(
                                    "Shipment",
                                    &[],
                                    &[vec![
                                        Value::Int(order),
                                        str_v("TRACK-1"),
                                        str_v("2024-01-02 09:30:00"),
                                    ]],
                                )
                                .unwrap();
                        }
                    }
                }
                // delete an order (cascades to items and shipments)
                4 => {
                    if !live_orders.is_empty() {
                        let i = rng.gen_range(0..live_orders.len());
                        let order = live_orders.remove(i);
                        store
                            .delete(
                                "Order",
                                &Condition::Cmp {
                                    left: ScalarExpr::Attr("order".into()),
                                    op: CmpOp::Eq,
                                    right: ScalarExpr::Lit(Literal::Int(order)),
                                },
                            )
                            .unwrap();
                    }
                }
                // cautious update of a non-key attribute
                5 => {
                    store
                        .update(
                            "Customer",
                            &Condition::Mapping(vec![(
                                "customer".into(),
                                Literal::Str(customers.choose(&mut rng).unwrap().to_string()),
                            )]),
                            &[("customer_name".into(), str_v(&format!("renamed {step}")))],
                        )
                        .unwrap();
                }
                // injected violations: every one must be rejected atomically
                6 => {
                    let snapshot = store.clone();
                    let err = store.insert(
                        "Order",
                        &[],
                        &[vec![
                            Value::Int(next_order + 1000),
                            str_v("nobody"),
                            str_v("2024-01-01 10:00:00"),
                        ]],
                    );
                    assert!(matches!(err, Err(StoreError::ReferentialViolation { .. })));
                    assert_eq!(store, snapshot, "rejected insert must not change the store");
                }
                7 => {
                    if let Some(&order) = live_orders.as_slice().choose(&mut rng) {
                        let snapshot = store.clone();
                        let err = store.insert(
                            "Order",
                            &[],
                            &[vec![
                                Value::Int(order),
                                str_v(customers[0]),
                                str_v("2024-01-01 10:00:00"),
                            ]],
                        );
                        assert!(matches!(err, Err(StoreError::DuplicateKey { .. })));
                        assert_eq!(store, snapshot);
                    }
                }
                8 => {
                    // master transaction with a bad part reference: nothing
                    // of it may land, including the valid master row
                    let snapshot = store.clone();
                    let order = next_order + 2000;
                    let err = store.insert_master(
                        "Order",
                        &[],
                        &[vec![
                            Value::Int(order),
                            str_v(customers[0]),
                            str_v("2024-01-01 10:00:00"),
                        ]],
                        &[(
                            "Order.Item".to_string(),
                            part_attrs.clone(),
                            vec![vec![
                                Value::Int(order),
                                Value::Int(9999),
                                str_v("no-such-sku"),
                                str_v("each"),
                                Value::Double(1.0),
                                Value::Double(1.0),
                            ]],
                        )],
                    );
                    assert!(matches!(err, Err(StoreError::ReferentialViolation { .. })));
                    assert_eq!(store, snapshot);
                }
                _ => {
                    let snapshot = store.clone();
                    // direct part insert, primary-key update, foreign-key
                    // update, and direct part delete are all refused
                    assert!(matches!(
                        store.insert("Order.Item", &[], &[]),
                        Err(StoreError::PartDirectInsert(_))
                    ));
                    assert!(matches!(
                        store.update(
                            "Order",
                            &Condition::AndFn(vec![]),
                            &[("order".into(), Value::Int(1))]
                        ),
                        Err(StoreError::PrimaryKeyUpdate(_))
                    ));
                    assert!(matches!(
                        store.update(
                            "Order",
                            &Condition::AndFn(vec![]),
                            &[("customer".into(), str_v("alice"))]
                        ),
                        Err(StoreError::ForeignKeyUpdate(_))
                    ));
                    assert!(matches!(
                        store.delete("Order.Item", &Condition::AndFn(vec![])),
                        Err(StoreError::PartDirectDelete(_))
                    ));
                    assert_eq!(store, snapshot);
                }
            }
            let violations = store.audit();
            assert!(
                violations.is_empty(),
                "audit failed after step {step}: {violations:?}"
            );
        }
    });
}

// ---------------------------------------------------------------------------
// 5. Transpiler golden tests + engine execution
// ---------------------------------------------------------------------------

fn squash(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

const DDL_GOLDENS: &[(&str, &str)] = &[
    (
        "Student",
        r#"CREATE TABLE Student (
   student_id int unsigned NOT NULL COMMENT "university ID",
   first_name varchar(40) NOT NULL,
   last_name varchar(40) NOT NULL,
   sex enum('F', 'M', 'U') NOT NULL,
   date_of_birth date NOT NULL,
   home_address varchar(200) NOT NULL COMMENT "street address",
   home_city varchar(30) NOT NULL,
   home_state char(2) NOT NULL COMMENT "two-letter abbreviation",
   home_zipcode char(10) NOT NULL,
   home_phone varchar(14) NOT NULL,
   PRIMARY KEY (student_id)
);"#,
    ),
    (
        "Department",
        r#"CREATE TABLE Department (
   dept char(6) NOT NULL COMMENT "abbreviated department name, e.g. BIOL",
   dept_name varchar(200) NOT NULL COMMENT "full department name",
   dept_address varchar(200) NOT NULL COMMENT "mailing address",
   dept_phone varchar(14) NOT NULL,
   PRIMARY KEY (dept)
);"#,
    ),
    (
        "StudentMajor",
        r#"CREATE TABLE StudentMajor (
   student_id int unsigned NOT NULL,
   dept char(6) NOT NULL,
   declare_date date NOT NULL COMMENT "when student declared her major",
   PRIMARY KEY (student_id),
   FOREIGN KEY (student_id) REFERENCES Student(student_id) ON DELETE CASCADE,
   FOREIGN KEY (dept) REFERENCES Department(dept) ON DELETE CASCADE
);"#,
    ),
];

const QUERY_GOLDENS: &[(&str, &str)] = &[
    (
        "Student & Enroll",
        "SELECT * FROM Student WHERE student_id IN (SELECT student_id FROM Enroll)",
    ),
    (
        r"Student \ Enroll",
        "SELECT * FROM Student WHERE student_id NOT IN (SELECT student_id FROM Enroll)",
    ),
    (
        r#"Student & (Enroll & dept == "BIOL") \ (Enroll & dept == "MATH")"#,
        "SELECT * FROM (SELECT * FROM Student WHERE student_id IN (SELECT student_id FROM Enroll WHERE dept = 'BIOL')) AS _r WHERE student_id NOT IN (SELECT student_id FROM Enroll WHERE dept = 'MATH')",
    ),
    (
        r"Student \ (Enroll & CurrentTerm)",
        "SELECT * FROM Student WHERE student_id NOT IN (SELECT student_id FROM Enroll WHERE (term_year, term) IN (SELECT term_year, term FROM CurrentTerm))",
    ),
    (
        r"Student & (Enroll \ StudentMajor & CurrentTerm)",
        "SELECT * FROM Student WHERE student_id IN (SELECT student_id FROM (SELECT * FROM (SELECT * FROM Enroll WHERE (dept, student_id) NOT IN (SELECT dept, student_id FROM StudentMajor)) AS _r WHERE (term_year, term) IN (SELECT term_year, term FROM CurrentTerm)) AS _s0)",
    ),
    (
        "Student & [Enroll, StudentMajor]",
        "SELECT * FROM Student WHERE student_id IN (SELECT student_id FROM Enroll) OR student_id IN (SELECT student_id FROM StudentMajor)",
    ),
];

/// Queries run against a real SQL engine and compared with in-memory
/// evaluation.
const ENGINE_LEG_QUERIES: &[&str] = &[
    "Student & Enroll",
    r"Student \ Enroll",
    r#"Student & (Enroll & dept == "BIOL") \ (Enroll & dept == "MATH")"#,
    r"Student \ (Enroll & CurrentTerm)",
    r"Student & (Enroll \ StudentMajor & CurrentTerm)",
    "Student & [Enroll, StudentMajor]",
    r#"Student & home_state in ["OK", "NM", "TX"]"#,
    r#"Student & {first_name: "Alice", dept: "MATH"}"#,
    "Grade * LetterGrade",
    "Student.proj(first_name, last_name)",
    "StudentMajor.proj(major: dept)",
    "Section.aggr(Enroll, n: count())",
    "Course.aggr(Grade * LetterGrade, avg_grade: avg(points))",
    "(Grade * Course * LetterGrade).proj(total: points * credits)",
    r#"(Student & sex == "F") + (Student & sex == "M")"#,
    "U(home_state).aggr(Student, n: count())",
];

/// Canonical rendering for cross-engine comparison: numbers compare
/// numerically (SQLite does not preserve decimal scale), strings exactly.
fn sql_canon(v: &Value) -> String {
    match v {
        Value::Null => "\\N".into(),
        other => match other.as_f64() {
            Some(f) => format!("{:.6}", f),
            None => other.to_string(),
        },
    }
}

#[test]
fn criterion_5_transpiler_goldens_and_engine_execution() {
    criterion(5, "transpiler goldens + engine execution", || {
        let store = university_store();
        let opts = SqlOptions::default();
        for (entity, golden) in DDL_GOLDENS {
            let sql = ddl_to_sql(store.catalog(), entity, &opts).unwrap();
            assert_eq!(squash(&sql), squash(golden), "DDL golden mismatch: {entity}");
        }
        for (query, golden) in QUERY_GOLDENS {
            let expr = parse_query(query).unwrap();
            let sql = query_to_sql(&store, &expr, &opts).unwrap();
            assert_eq!(squash(&sql), squash(golden), "query golden mismatch: {query}");
        }

        // engine-execution leg: build the schema and seed in SQLite, run
        // the transpiled queries, compare with in-memory evaluation
        let sqlite_opts = SqlOptions {
            dialect: Dialect::Sqlite,
            cascade: true,
        };
        let conn = rusqlite::Connection::open_in_memory().unwrap();
        for spec in store.catalog().entities() {
            let ddl = ddl_to_sql(store.catalog(), &spec.name, &sqlite_opts).unwrap();
            conn.execute_batch(&ddl).unwrap();
        }
        for stmt in parse_script(UNIVERSITY).unwrap() {
            if let Statement::Manip(m @ Manipulation::Insert { .. }) = stmt {
                let sql = manipulation_to_sql(store.catalog(), &m, &sqlite_opts).unwrap();
                conn.execute_batch(&sql).unwrap();
            }
        }
        for query in ENGINE_LEG_QUERIES {
            let expr = parse_query(query).unwrap();
            let rel = eval(&expr, &store).unwrap();
            let sql = query_to_sql(&store, &expr, &sqlite_opts).unwrap();
            let mut stmt = conn
                .prepare(&sql)
                .unwrap_or_else(|e| panic!("sqlite rejects `{query}`: {e}\n{sql}"));
            let ncols = stmt.column_count();
            let names: Vec<String> = (0..ncols)
                .map(|i| stmt.column_name(i).unwrap().to_string())
                .collect();
            let mut db_rows: Vec<Vec<String>> = stmt
                .query_map([], |row| {
                    let mut out = Vec::new();
                    for i in 0..ncols {
                        let v = match row.get_ref(i)? {
                            rusqlite::types::ValueRef::Null => Value::Null,
                            rusqlite::types::ValueRef::Integer(x) => Value::Int(x),
                            rusqlite::types::ValueRef::Real(x) => Value::Double(x),
                            rusqlite::types::ValueRef::Text(t) => {
                                Value::Str(String::from_utf8_lossy(t).into_owned())
                            }
                            rusqlite::types::ValueRef::Blob(_) => Value::Null,
                        };
                        out.push(sql_canon(&v));
                    }
                    Ok(out)
                })
                .unwrap()
                .collect::<Result<_, _>>()
                .unwrap();
            // align database columns with the in-memory header order
            let order: Vec<usize> = rel
                .header
                .attrs
                .iter()
                .map(|a| {
                    names
                        .iter()
                        .position(|n| n == &a.name)
                        .unwrap_or_else(|| panic!("column {} missing for `{query}`", a.name))
                })
                .collect();
            for r in &mut db_rows {
                *r = order.iter().map(|&i| r[i].clone()).collect();
            }
            db_rows.sort();
            let mut mem_rows: Vec<Vec<String>> = rel
                .rows
                .iter()
                .map(|r| r.iter().map(sql_canon).collect())
                .collect();
            mem_rows.sort();
            assert_eq!(db_rows, mem_rows, "SQL engine disagrees on `{query}`");
        }
    });
}

// ---------------------------------------------------------------------------
// 6. Delete-cascade oracle
// ---------------------------------------------------------------------------

const CASCADE_SCHEMAS: &[&str] = &[
    // chain
    "
::A
a : int
---
x : int
::B
-> A
b : int
---
::C
-> B
---
y : int
",
    // diamond with a restricted secondary dependency
    "
::Root
r : int
---
::S
-> Root
---
v : int
::W
-> Root
---
w : int
::T
-> S
---
-> W & w > 0
",
    // union dependency target
    "
::Person
person_id : int
---
::Stu
-> Person
---
::Emp
-> Person
---
::Member
-> Stu.proj() + Emp.proj()
---
",
];

/// Brute-force downward referential closure: repeatedly drop rows whose
/// foreign-key tuple has no match in the restriction-stripped target.
fn cascade_oracle(start: &Store, entity: &str, attr: &str, cut: i64) -> Store {
    let mut s = start.clone();
    let spec = s.catalog().get(entity).unwrap().clone();
    let at = spec.attrs.iter().position(|a| a.name == attr).unwrap();
    // initial removal: rows whose restricted attribute is within the cut
    loop {
        let rows = s.base_rows(entity).unwrap();
        let victim = rows
            .iter()
            .position(|r| matches!(r[at], Value::Int(v) if v <= cut));
        match victim {
            Some(i) => s.remove_row_unchecked(entity, i),
            None => break,
        }
    }
    // closure
    loop {
        let mut changed = false;
        for spec in s.catalog().entities().to_vec() {
            for dep in &spec.deps {
                let target = djengine::catalog::strip_restrictions(&dep.target);
                let trows: Vec<ORow> = oracle_eval(&target, &s).unwrap();
                let positions: Vec<usize> = dep
                    .fk_attrs
                    .iter()
                    .map(|a| spec.attrs.iter().position(|x| &x.name == a).unwrap())
                    .collect();
                loop {
                    let rows = s.base_rows(&spec.name).unwrap();
                    let victim = rows.iter().position(|r| {
                        let fk: Vec<(&String, &Value)> = dep
                            .fk_attrs
                            .iter()
                            .zip(positions.iter().map(|&i| &r[i]))
                            .collect();
                        if dep.nullable && fk.iter().all(|(_, v)| v.is_null()) {
                            return false;
                        }
                        !trows.iter().any(|t| {
                            fk.iter().all(|(name, v)| {
                                !v.is_null()
                                    && t[*name].compare(v) == Some(std::cmp::Ordering::Equal)
                            })
                        })
                    });
                    match victim {
                        Some(i) => {
                            s.remove_row_unchecked(&spec.name, i);
                            changed = true;
                        }
                        None => break,
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    s
}

fn same_tables(a: &Store, b: &Store, label: &str) {
    for spec in a.catalog().entities() {
        let mut ra = a.base_rows(&spec.name).unwrap();
        let mut rb = b.base_rows(&spec.name).unwrap();
        let key = |r: &Vec<Value>| format!("{r:?}");
        ra.sort_by_key(key);
        rb.sort_by_key(key);
        assert_eq!(ra, rb, "cascade mismatch in {} ({label})", spec.name);
    }
}

#[test]
fn criterion_6_delete_cascade_oracle() {
    criterion(6, "delete-cascade oracle", || {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for (si, schema) in CASCADE_SCHEMAS.iter().enumerate() {
            for round in 0..40 {
                let mut store = Store::new();
                let mut specs = Vec::new();
                for stmt in parse_script(schema).unwrap() {
                    if let Statement::Decl(d) = stmt {
                        store.declare(&d).unwrap();
                        specs.push(d.name.clone());
                    }
                }
                // random data, inserted top-down so references resolve
                for name in &specs {
                    let spec = store.catalog().get(name).unwrap().clone();
                    let mut candidates: Vec<Vec<Value>> = Vec::new();
                    // enumerate candidate rows over small integer domains
                    for seed in 0..6i64 {
                        let row: Vec<Value> = spec
                            .attrs
                            .iter()
                            .map(|a| {
                                if a.from_dependency || a.is_primary {
                                    Value::Int(seed)
                                } else {
                                    Value::Int(rng.gen_range(-1..3))
                                }
                            })
                            .collect();
                        candidates.push(row);
                    }
                    for row in candidates {
                        if rng.gen_bool(0.7) {
                            // references may be dangling; ignore rejections
                            let _ = store.insert(name, &[], &[row]);
                        }
                    }
                }
                assert!(store.audit().is_empty());
                // delete a random key set from a random root entity
                let entity = specs[rng.gen_range(0..specs.len().min(2))].clone();
                let cut = rng.gen_range(0..6i64);
                let spec = store.catalog().get(&entity).unwrap().clone();
                let pk_name = spec
                    .attrs
                    .iter()
                    .find(|a| a.is_primary)
                    .map(|a| a.name.clone())
                    .unwrap();
                let expected = cascade_oracle(&store, &entity, &pk_name, cut);
                let mut engine = store.clone();
                engine
                    .delete(
                        &entity,
                        &Condition::Cmp {
                            left: ScalarExpr::Attr(pk_name.clone()),
                            op: CmpOp::Le,
                            right: ScalarExpr::Lit(Literal::Int(cut)),
                        },
                    )
                    .unwrap();
                same_tables(&engine, &expected, &format!("schema {si}, round {round}"));
                assert!(engine.audit().is_empty());
            }
        }
    });
}

// ---------------------------------------------------------------------------
// 7. Populate
// ---------------------------------------------------------------------------

const POPULATE_SCHEMA: &str = "
::P
p : int
---
::Q
q : int
---
::C
-> P
-> Q
---
value : double
";

fn populate_store() -> Store {
    let mut store = Store::new();
    for stmt in parse_script(POPULATE_SCHEMA).unwrap() {
        if let Statement::Decl(d) = stmt {
            store.declare(&d).unwrap();
        }
    }
    store
        .insert("P", &[], &[vec![Value::Int(1)], vec![Value::Int(2)]])
        .unwrap();
    store
        .insert(
            "Q",
            &[],
            &[vec![Value::Int(10)], vec![Value::Int(20)], vec![Value::Int(30)]],
        )
        .unwrap();
    store
}

fn good_make(key: &ORow) -> Result<MakeResult, String> {
    let (Some(Value::Int(p)), Some(Value::Int(q))) = (key.get("p"), key.get("q")) else {
        return Err("missing key attributes".into());
    };
    let mut row = BTreeMap::new();
    row.insert("value".to_string(), Value::Double((p * q) as f64));
    Ok(MakeResult {
        rows: vec![row],
        parts: vec![],
    })
}

#[test]
fn criterion_7_populate() {
    criterion(7, "populate", || {
        // full run over the 2x3 domain
        let mut store = populate_store();
        let mut registry = MakeRegistry::new();
        registry.register("C", good_make);
        let report = populate(&mut store, "C", &registry).unwrap();
        assert_eq!(report.made, 6);
        assert!(report.errored.is_empty());
        assert_eq!(store.row_count("C"), 6);
        assert!(store.audit().is_empty());

        // idempotence: a second run has nothing to do
        let report = populate(&mut store, "C", &registry).unwrap();
        assert_eq!(report.made, 0);
        assert!(report.errored.is_empty());
        assert_eq!(store.row_count("C"), 6);

        // a failing make for one key must not abort the other five
        let mut store = populate_store();
        let mut registry = MakeRegistry::new();
        registry.register("C", |key: &ORow| {
            if key.get("p") == Some(&Value::Int(2)) && key.get("q") == Some(&Value::Int(20)) {
                return Err("instrument offline".into());
            }
            good_make(key)
        });
        let report = populate(&mut store, "C", &registry).unwrap();
        assert_eq!(report.made, 5);
        assert_eq!(report.errored.len(), 1);
        assert_eq!(store.row_count("C"), 5);
        assert!(store.audit().is_empty());

        // after the failure is fixed, only the missing key is made
        let mut registry = MakeRegistry::new();
        registry.register("C", good_make);
        let report = populate(&mut store, "C", &registry).unwrap();
        assert_eq!(report.made, 1);
        assert_eq!(store.row_count("C"), 6);
        assert!(store.audit().is_empty());
    });
}
