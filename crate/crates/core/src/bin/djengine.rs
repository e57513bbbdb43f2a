//! Command-line front end: run scripts against an in-memory store, start a
//! small interactive session, emit SQL, or emit schema diagrams.
//!
//! Exit codes: 0 success, 1 runtime (schema/store/query) error, 2 parse
//! error.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use djengine::algebra::{eval, Relation};
use djengine::compute::populate_declarative;
use djengine::lang::ast::{Condition, Manipulation, QueryExpr, Statement};
use djengine::lang::parser::{parse_script_with_recovery, parse_statement_text};
use djengine::store::Store;
use djengine::transpile::{ddl_to_sql, manipulation_to_sql, query_to_sql, Dialect, SqlOptions};
use djengine::value::Value;

#[derive(Parser)]
#[command(name = "djengine", version, about = "Relational data model engine")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute a script: declarations, inserts/deletes/updates, populate,
    /// and queries (results printed sorted by primary key).
    Run {
        script: PathBuf,
        /// Store directory: loaded before the script if it exists, saved
        /// after a successful run.
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Interactive statement-at-a-time session on stdin.
    Repl {
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Translate a script's declarations, queries, and manipulations to SQL.
    Sql {
        script: PathBuf,
        #[arg(long, value_enum, default_value_t = DialectArg::Mysql)]
        dialect: DialectArg,
        /// Omit ON DELETE CASCADE from foreign keys.
        #[arg(long)]
        no_cascade: bool,
    },
    /// Emit the schema diagram of a script's declarations as DOT.
    Diagram { script: PathBuf },
    /// Verify a dumped store directory: audit it and print row counts.
    Load { store: PathBuf },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DialectArg {
    Mysql,
    Sqlite,
}

impl From<DialectArg> for Dialect {
    fn from(d: DialectArg) -> Dialect {
        match d {
            DialectArg::Mysql => Dialect::Mysql,
            DialectArg::Sqlite => Dialect::Sqlite,
        }
    }
}

/// Script execution state: the store plus query variables bound with
/// `Name = expr`, expanded by substitution before analysis.
struct Session {
    store: Store,
    aliases: HashMap<String, QueryExpr>,
}

impl Session {
    fn new(store: Store) -> Self {
        Session {
            store,
            aliases: HashMap::new(),
        }
    }

    fn expand(&self, expr: &QueryExpr) -> QueryExpr {
        match expr {
            QueryExpr::Base(name) => match self.aliases.get(name) {
                Some(bound) => bound.clone(),
                None => expr.clone(),
            },
            QueryExpr::Restrict {
                input,
                cond,
                exclude,
            } => QueryExpr::Restrict {
                input: Box::new(self.expand(input)),
                cond: Box::new(self.expand_cond(cond)),
                exclude: *exclude,
            },
            QueryExpr::Join(a, b) => {
                QueryExpr::Join(Box::new(self.expand(a)), Box::new(self.expand(b)))
            }
            QueryExpr::Union(a, b) => {
                QueryExpr::Union(Box::new(self.expand(a)), Box::new(self.expand(b)))
            }
            QueryExpr::Project {
                input,
                items,
                ellipsis,
            } => QueryExpr::Project {
                input: Box::new(self.expand(input)),
                items: items.clone(),
                ellipsis: *ellipsis,
            },
            QueryExpr::Aggregate {
                input,
                group,
                items,
            } => QueryExpr::Aggregate {
                input: Box::new(self.expand(input)),
                group: Box::new(self.expand(group)),
                items: items.clone(),
            },
            QueryExpr::Universal(_) => expr.clone(),
        }
    }

    fn expand_cond(&self, cond: &Condition) -> Condition {
        match cond {
            Condition::Subquery(e) => Condition::Subquery(self.expand(e)),
            Condition::OrList(cs) => {
                Condition::OrList(cs.iter().map(|c| self.expand_cond(c)).collect())
            }
            Condition::AndFn(cs) => {
                Condition::AndFn(cs.iter().map(|c| self.expand_cond(c)).collect())
            }
            Condition::NotFn(c) => Condition::NotFn(Box::new(self.expand_cond(c))),
            other => other.clone(),
        }
    }

    /// Execute one statement; `Some(relation)` for queries.
    fn execute(&mut self, stmt: &Statement) -> Result<Option<Relation>, String> {
        match stmt {
            Statement::Decl(d) => {
                self.store.declare(d).map_err(|e| e.to_string())?;
                Ok(None)
            }
            Statement::Assign(name, expr) => {
                let expanded = self.expand(expr);
                self.aliases.insert(name.clone(), expanded);
                Ok(None)
            }
            Statement::Query(expr) => {
                let expanded = self.expand(expr);
                let rel = eval(&expanded, &self.store).map_err(|e| e.to_string())?;
                Ok(Some(rel))
            }
            Statement::Manip(Manipulation::Populate { entity, make }) => {
                let report = populate_declarative(&mut self.store, entity, make)
                    .map_err(|e| e.to_string())?;
                for (key, error) in &report.errored {
                    eprintln!("populate {entity}: key {key:?} failed: {error}");
                }
                Ok(None)
            }
            Statement::Manip(m) => {
                let expanded = match m {
                    Manipulation::Delete { entity, cond } => Manipulation::Delete {
                        entity: entity.clone(),
                        cond: self.expand_cond(cond),
                    },
                    Manipulation::Update {
                        entity,
                        cond,
                        assignments,
                    } => Manipulation::Update {
                        entity: entity.clone(),
                        cond: self.expand_cond(cond),
                        assignments: assignments.clone(),
                    },
                    other => other.clone(),
                };
                self.store
                    .run_manipulation(&expanded)
                    .map_err(|e| e.to_string())?;
                Ok(None)
            }
        }
    }
}

fn print_relation(rel: &Relation, format: Format, out: &mut dyn std::io::Write) {
    let names: Vec<&str> = rel.header.attrs.iter().map(|a| a.name.as_str()).collect();
    let rows = rel.sorted_rows();
    match format {
        Format::Csv => {
            let _ = writeln!(out, "{}", names.join(","));
            for row in &rows {
                let cells: Vec<String> = row.iter().map(Value::to_string).collect();
                let _ = writeln!(out, "{}", cells.join(","));
            }
        }
        Format::Json => {
            let objects: Vec<serde_json::Value> = rows
                .iter()
                .map(|row| {
                    names
                        .iter()
                        .zip(row)
                        .map(|(n, v)| (n.to_string(), value_json(v)))
                        .collect::<serde_json::Map<_, _>>()
                        .into()
                })
                .collect();
            let _ = writeln!(
                out,
                "{}",
                serde_json::to_string_pretty(&objects).unwrap_or_default()
            );
        }
        Format::Table => {
            let mut widths: Vec<usize> = names.iter().map(|n| n.len()).collect();
            let rendered: Vec<Vec<String>> = rows
                .iter()
                .map(|row| row.iter().map(Value::to_string).collect())
                .collect();
            for row in &rendered {
                for (i, cell) in row.iter().enumerate() {
                    widths[i] = widths[i].max(cell.len());
                }
            }
            let line = |cells: Vec<String>| {
                cells
                    .iter()
                    .zip(&widths)
                    .map(|(c, w)| format!("{c:<w$}"))
                    .collect::<Vec<_>>()
                    .join("  ")
            };
            let _ = writeln!(out, "{}", line(names.iter().map(|s| s.to_string()).collect()));
            let _ = writeln!(
                out,
                "{}",
                widths
                    .iter()
                    .map(|w| "-".repeat(*w))
                    .collect::<Vec<_>>()
                    .join("  ")
            );
            for row in rendered {
                let _ = writeln!(out, "{}", line(row));
            }
            let _ = writeln!(out, "({} rows)", rows.len());
        }
    }
}

fn value_json(v: &Value) -> serde_json::Value {
    match v {
        Value::Null => serde_json::Value::Null,
        Value::Int(i) => (*i).into(),
        Value::Double(d) => serde_json::Number::from_f64(*d)
            .map(serde_json::Value::Number)
            .unwrap_or(serde_json::Value::Null),
        Value::Decimal { .. } => serde_json::Number::from_f64(v.as_f64().unwrap())
            .map(serde_json::Value::Number)
            .unwrap_or(serde_json::Value::Null),
        Value::Str(s) => s.clone().into(),
    }
}

fn parse_file(path: &PathBuf) -> Result<Vec<Statement>, ExitCode> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", path.display());
            return Err(ExitCode::from(1));
        }
    };
    let (stmts, errors) = parse_script_with_recovery(&text);
    if !errors.is_empty() {
        for e in &errors {
            eprintln!("{}: {e}", path.display());
        }
        return Err(ExitCode::from(2));
    }
    Ok(stmts)
}

fn open_store(dir: &Option<PathBuf>) -> Result<Store, ExitCode> {
    match dir {
        Some(d) if d.join("manifest.json").exists() => Store::load(d).map_err(|e| {
            eprintln!("cannot load store {}: {e}", d.display());
            ExitCode::from(1)
        }),
        _ => Ok(Store::new()),
    }
}

fn save_store(store: &Store, dir: &Option<PathBuf>) -> Result<(), ExitCode> {
    if let Some(d) = dir {
        store.dump(d).map_err(|e| {
            eprintln!("cannot save store {}: {e}", d.display());
            ExitCode::from(1)
        })?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => code,
    }
}

fn run(cli: Cli) -> Result<(), ExitCode> {
    match cli.cmd {
        Cmd::Run {
            script,
            store,
            format,
        } => {
            let stmts = parse_file(&script)?;
            let mut session = Session::new(open_store(&store)?);
            let stdout = std::io::stdout();
            for stmt in &stmts {
                match session.execute(stmt) {
                    Ok(Some(rel)) => print_relation(&rel, format, &mut stdout.lock()),
                    Ok(None) => {}
                    Err(e) => {
                        eprintln!("{e}");
                        return Err(ExitCode::from(1));
                    }
                }
            }
            save_store(&session.store, &store)?;
            Ok(())
        }
        Cmd::Repl { store, format } => {
            let mut session = Session::new(open_store(&store)?);
            let stdin = std::io::stdin();
            let mut buffer = String::new();
            eprintln!("enter statements; a blank line executes, Ctrl-D exits");
            for line in stdin.lock().lines() {
                let line = match line {
                    Ok(l) => l,
                    Err(_) => break,
                };
                if !line.trim().is_empty() {
                    buffer.push_str(&line);
                    buffer.push('\n');
                    continue;
                }
                if buffer.trim().is_empty() {
                    continue;
                }
                let text = std::mem::take(&mut buffer);
                match parse_statement_text(&text) {
                    Ok(stmt) => match session.execute(&stmt) {
                        Ok(Some(rel)) => {
                            print_relation(&rel, format, &mut std::io::stdout().lock())
                        }
                        Ok(None) => eprintln!("ok"),
                        Err(e) => eprintln!("{e}"),
                    },
                    Err(e) => eprintln!("{e}"),
                }
            }
            save_store(&session.store, &store)?;
            Ok(())
        }
        Cmd::Sql {
            script,
            dialect,
            no_cascade,
        } => {
            let stmts = parse_file(&script)?;
            let opts = SqlOptions {
                dialect: dialect.into(),
                cascade: !no_cascade,
            };
            let mut session = Session::new(Store::new());
            for stmt in &stmts {
                let rendered = match stmt {
                    Statement::Decl(d) => {
                        session.store.declare(d).map_err(|e| {
                            eprintln!("{e}");
                            ExitCode::from(1)
                        })?;
                        ddl_to_sql(session.store.catalog(), &d.name, &opts)
                            .map_err(|e| e.to_string())
                    }
                    Statement::Query(q) => {
                        query_to_sql(session.store.catalog(), &session.expand(q), &opts)
                            .map(|s| format!("{s};"))
                            .map_err(|e| e.to_string())
                    }
                    Statement::Assign(name, expr) => {
                        let expanded = session.expand(expr);
                        session.aliases.insert(name.clone(), expanded);
                        continue;
                    }
                    Statement::Manip(m) => {
                        manipulation_to_sql(session.store.catalog(), m, &opts)
                            .map_err(|e| e.to_string())
                    }
                };
                match rendered {
                    Ok(sql) => println!("{sql}\n"),
                    Err(e) => {
                        eprintln!("{e}");
                        return Err(ExitCode::from(1));
                    }
                }
            }
            Ok(())
        }
        Cmd::Diagram { script } => {
            let stmts = parse_file(&script)?;
            let mut store = Store::new();
            for stmt in &stmts {
                if let Statement::Decl(d) = stmt {
                    if let Err(e) = store.declare(d) {
                        eprintln!("{e}");
                        return Err(ExitCode::from(1));
                    }
                }
            }
            print!("{}", djengine::diagram::emit_dot(store.catalog()));
            Ok(())
        }
        Cmd::Load { store } => {
            let loaded = Store::load(&store).map_err(|e| {
                eprintln!("{e}");
                ExitCode::from(1)
            })?;
            for spec in loaded.catalog().entities() {
                println!("{}: {} rows", spec.name, loaded.row_count(&spec.name));
            }
            println!("audit: clean");
            Ok(())
        }
    }
}
