//! Recursive-descent parser for declarations, manipulations, and queries.
//!
//! Operator precedence, tightest to loosest: postfix `.proj`/`.aggr`,
//! then `*`, then left-associative `&` and `\`, then `+`. The unparenthesized
//! operand of a restriction condition parses at join level, so `A & B * C`
//! restricts `A` by the join `B * C`.

use crate::error::ParseError;
use crate::lang::ast::*;
use crate::lang::lexer::{tokenize, Token, TokenKind};
use crate::value::Datatype;

pub fn is_entity_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_uppercase())
        && chars.all(|c| c.is_ascii_alphanumeric())
}

pub fn is_attr_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn new(tokens: Vec<Token>) -> Self {
        Parser { tokens, pos: 0 }
    }

    /// Index of the next non-comment token at or after `self.pos`.
    fn next_idx(&self) -> Option<usize> {
        (self.pos..self.tokens.len()).find(|&i| self.tokens[i].kind != TokenKind::Comment)
    }

    fn peek(&self) -> Option<&Token> {
        self.next_idx().map(|i| &self.tokens[i])
    }

    fn peek_text(&self) -> Option<&str> {
        self.peek().map(|t| t.text.as_str())
    }

    fn peek2(&self) -> Option<&Token> {
        let first = self.next_idx()?;
        (first + 1..self.tokens.len())
            .find(|&i| self.tokens[i].kind != TokenKind::Comment)
            .map(|i| &self.tokens[i])
    }

    fn at_end(&self) -> bool {
        self.peek().is_none()
    }

    fn advance(&mut self) -> Option<Token> {
        let i = self.next_idx()?;
        self.pos = i + 1;
        Some(self.tokens[i].clone())
    }

    fn err_at(&self, expected: impl Into<String>) -> ParseError {
        match self.peek() {
            Some(t) => ParseError {
                line: t.line,
                column: t.column,
                expected: expected.into(),
                found: format!("`{}`", t.text),
            },
            None => {
                let (line, column) = self
                    .tokens
                    .last()
                    .map(|t| (t.line, t.column + t.text.len()))
                    .unwrap_or((1, 1));
                ParseError {
                    line,
                    column,
                    expected: expected.into(),
                    found: "end of input".into(),
                }
            }
        }
    }

    fn eat(&mut self, text: &str) -> bool {
        if self.peek_text() == Some(text) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, text: &str) -> PResult<Token> {
        if self.peek_text() == Some(text) {
            Ok(self.advance().unwrap())
        } else {
            Err(self.err_at(format!("`{text}`")))
        }
    }

    fn expect_entity_name(&mut self) -> PResult<String> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Identifier && is_entity_name(&t.text) => {
                Ok(self.advance().unwrap().text)
            }
            _ => Err(self.err_at("entity set name")),
        }
    }

    /// Entity name, possibly the qualified part form `Master.Part`.
    fn expect_qualified_name(&mut self) -> PResult<String> {
        let mut name = self.expect_entity_name()?;
        if self.peek_text() == Some(".")
            && self
                .peek2()
                .is_some_and(|t| t.kind == TokenKind::Identifier && is_entity_name(&t.text))
        {
            self.advance();
            let part = self.advance().unwrap().text;
            name = format!("{name}.{part}");
        }
        Ok(name)
    }

    fn expect_attr_name(&mut self) -> PResult<String> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Identifier && is_attr_name(&t.text) => {
                Ok(self.advance().unwrap().text)
            }
            Some(t) if t.kind == TokenKind::Keyword => {
                Err(self.err_at("attribute name (keywords are reserved)"))
            }
            _ => Err(self.err_at("attribute name")),
        }
    }

    // ---- literals and scalar expressions ----

    fn parse_literal(&mut self) -> PResult<Literal> {
        let negative = self.peek_text() == Some("-")
            && self.peek2().is_some_and(|t| t.kind == TokenKind::Number);
        if negative {
            self.advance();
        }
        match self.peek() {
            Some(t) if t.kind == TokenKind::Number => {
                let text = self.advance().unwrap().text;
                number_literal(&text, negative, || self.err_at("number"))
            }
            Some(t) if t.kind == TokenKind::Str => Ok(Literal::Str(self.advance().unwrap().text)),
            Some(t) if t.text == "null" => {
                self.advance();
                Ok(Literal::Null)
            }
            // bare enum values in default position
            Some(t) if t.kind == TokenKind::Identifier && !negative => {
                Ok(Literal::Str(self.advance().unwrap().text))
            }
            _ => Err(self.err_at("literal")),
        }
    }

    fn parse_scalar(&mut self) -> PResult<ScalarExpr> {
        let mut left = self.parse_scalar_term()?;
        loop {
            let op = match self.peek_text() {
                Some("+") => BinOp::Add,
                Some("-") => BinOp::Sub,
                _ => break,
            };
            self.advance();
            let right = self.parse_scalar_term()?;
            left = ScalarExpr::Binary {
                op,
                left: Box::new(left),
                right: Box::new(right),
            };
        }
        Ok(left)
    }

    fn parse_scalar_term(&mut self) -> PResult<ScalarExpr> {
        let mut left = self.parse_scalar_factor()?;
        loop {
            let op = match self.peek_text() {
                Some("*") => BinOp::Mul,
                Some("/") => BinOp::Div,
                _ => break,
            };
            self.advance();
            let right = self.parse_scalar_factor()?;
            left = ScalarExpr::Binary {
                op,
                left: Box::new(left),
                right: Box::new(right),
            };
        }
        Ok(left)
    }

    fn parse_scalar_factor(&mut self) -> PResult<ScalarExpr> {
        match self.peek() {
            Some(t) if t.text == "(" => {
                self.advance();
                let e = self.parse_scalar()?;
                self.expect(")")?;
                Ok(e)
            }
            Some(t)
                if t.kind == TokenKind::Keyword && AGGR_FNS.contains(&t.text.as_str()) =>
            {
                let name = self.advance().unwrap().text;
                self.expect("(")?;
                let mut args = Vec::new();
                if self.peek_text() != Some(")") {
                    loop {
                        args.push(self.parse_scalar()?);
                        if !self.eat(",") {
                            break;
                        }
                    }
                }
                self.expect(")")?;
                Ok(ScalarExpr::Call { name, args })
            }
            Some(t) if t.kind == TokenKind::Identifier && is_attr_name(&t.text) => {
                Ok(ScalarExpr::Attr(self.advance().unwrap().text))
            }
            Some(t)
                if t.kind == TokenKind::Number
                    || t.kind == TokenKind::Str
                    || t.text == "-"
                    || t.text == "null" =>
            {
                Ok(ScalarExpr::Lit(self.parse_literal()?))
            }
            _ => Err(self.err_at("scalar expression")),
        }
    }

    // ---- conditions ----

    /// The operand of `&` or `\`, or an element of a bracketed collection.
    fn parse_condition(&mut self) -> PResult<Condition> {
        match self.peek() {
            Some(t) if t.text == "{" => self.parse_mapping(),
            Some(t) if t.text == "[" => {
                self.advance();
                let mut conds = Vec::new();
                if self.peek_text() != Some("]") {
                    loop {
                        conds.push(self.parse_condition()?);
                        if !self.eat(",") {
                            break;
                        }
                    }
                }
                self.expect("]")?;
                Ok(Condition::OrList(conds))
            }
            Some(t) if t.text == "And" => {
                self.advance();
                self.expect("(")?;
                self.expect("[")?;
                let mut conds = Vec::new();
                if self.peek_text() != Some("]") {
                    loop {
                        conds.push(self.parse_condition()?);
                        if !self.eat(",") {
                            break;
                        }
                    }
                }
                self.expect("]")?;
                self.expect(")")?;
                Ok(Condition::AndFn(conds))
            }
            Some(t) if t.text == "Not" => {
                self.advance();
                self.expect("(")?;
                let c = self.parse_condition()?;
                self.expect(")")?;
                Ok(Condition::NotFn(Box::new(c)))
            }
            Some(t) if t.text == "(" => {
                // A parenthesized group is a subquery primary (possibly with
                // postfix or join continuation, e.g. `(A + B).proj() * C`),
                // a grouped condition, or a grouped scalar opening a
                // comparison, e.g. `(a / b) in [1, 2]`. Try each in turn,
                // rewinding between attempts.
                let start = self.pos;
                if let Ok(q) = self.parse_join_level() {
                    return Ok(Condition::Subquery(q));
                }
                self.pos = start;
                let attempt: PResult<Condition> = (|| {
                    self.advance();
                    let inner = self.parse_condition()?;
                    self.expect(")")?;
                    Ok(inner)
                })();
                attempt.or_else(|_| {
                    self.pos = start;
                    self.parse_comparison()
                })
            }
            Some(t)
                if t.text == "U" || (t.kind == TokenKind::Identifier && is_entity_name(&t.text)) =>
            {
                // binds at join level so that `A & B * C` restricts by a join
                Ok(Condition::Subquery(self.parse_join_level()?))
            }
            _ => self.parse_comparison(),
        }
    }

    fn parse_comparison(&mut self) -> PResult<Condition> {
        let left = self.parse_scalar()?;
        if self.eat("in") {
            self.expect("[")?;
            let mut list = Vec::new();
            if self.peek_text() != Some("]") {
                loop {
                    list.push(self.parse_literal()?);
                    if !self.eat(",") {
                        break;
                    }
                }
            }
            self.expect("]")?;
            return Ok(Condition::In { left, list });
        }
        let op = match self.peek_text() {
            Some("==") | Some("=") => CmpOp::Eq,
            Some("!=") | Some("<>") => CmpOp::Ne,
            Some("<") => CmpOp::Lt,
            Some("<=") => CmpOp::Le,
            Some(">") => CmpOp::Gt,
            Some(">=") => CmpOp::Ge,
            _ => return Err(self.err_at("comparison operator")),
        };
        self.advance();
        if self.peek_text() == Some("null") {
            return Err(self.err_at("non-null operand (use a mapping to match nulls)"));
        }
        let right = self.parse_scalar()?;
        Ok(Condition::Cmp { left, op, right })
    }

    fn parse_mapping(&mut self) -> PResult<Condition> {
        self.expect("{")?;
        let mut pairs = Vec::new();
        if self.peek_text() != Some("}") {
            loop {
                let key = match self.peek() {
                    Some(t) if t.kind == TokenKind::Identifier && is_attr_name(&t.text) => {
                        self.advance().unwrap().text
                    }
                    // mapping keys are free-form; unmatched ones are ignored
                    Some(t) if t.kind == TokenKind::Keyword => self.advance().unwrap().text,
                    _ => return Err(self.err_at("mapping key")),
                };
                self.expect(":")?;
                pairs.push((key, self.parse_literal()?));
                if !self.eat(",") {
                    break;
                }
            }
        }
        self.expect("}")?;
        Ok(Condition::Mapping(pairs))
    }

    // ---- query expressions ----

    pub fn parse_query_expr(&mut self) -> PResult<QueryExpr> {
        let mut left = self.parse_restrict_level()?;
        while self.peek_text() == Some("+") {
            self.advance();
            let right = self.parse_restrict_level()?;
            left = QueryExpr::Union(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn parse_restrict_level(&mut self) -> PResult<QueryExpr> {
        let mut left = self.parse_join_level()?;
        loop {
            let exclude = match self.peek_text() {
                Some("&") => false,
                Some("\\") => true,
                _ => break,
            };
            self.advance();
            let cond = self.parse_condition()?;
            left = left.restrict(cond, exclude);
        }
        Ok(left)
    }

    fn parse_join_level(&mut self) -> PResult<QueryExpr> {
        let mut left = self.parse_postfix()?;
        while self.peek_text() == Some("*") {
            self.advance();
            let right = self.parse_postfix()?;
            left = QueryExpr::Join(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn parse_postfix(&mut self) -> PResult<QueryExpr> {
        let mut expr = self.parse_primary()?;
        while self.peek_text() == Some(".") {
            match self.peek2().map(|t| t.text.as_str()) {
                Some("proj") => {
                    self.advance();
                    self.advance();
                    let (items, ellipsis) = self.parse_proj_args()?;
                    expr = QueryExpr::Project {
                        input: Box::new(expr),
                        items,
                        ellipsis,
                    };
                }
                Some("aggr") => {
                    self.advance();
                    self.advance();
                    expr = self.parse_aggr_args(expr)?;
                }
                Some(name)
                    if is_entity_name(name) && matches!(&expr, QueryExpr::Base(b) if !b.contains('.')) =>
                {
                    // part entity set reference `Master.Part`
                    self.advance();
                    let part = self.advance().unwrap().text;
                    if let QueryExpr::Base(master) = expr {
                        expr = QueryExpr::Base(format!("{master}.{part}"));
                    }
                }
                _ => return Err(self.err_at("`proj` or `aggr`")),
            }
        }
        Ok(expr)
    }

    fn parse_primary(&mut self) -> PResult<QueryExpr> {
        match self.peek() {
            Some(t) if t.text == "U" => {
                self.advance();
                self.expect("(")?;
                let mut attrs = Vec::new();
                if self.peek_text() != Some(")") {
                    loop {
                        attrs.push(self.expect_attr_name()?);
                        if !self.eat(",") {
                            break;
                        }
                    }
                }
                self.expect(")")?;
                Ok(QueryExpr::Universal(attrs))
            }
            Some(t) if t.kind == TokenKind::Identifier && is_entity_name(&t.text) => {
                Ok(QueryExpr::Base(self.advance().unwrap().text))
            }
            Some(t) if t.text == "(" => {
                self.advance();
                let e = self.parse_query_expr()?;
                self.expect(")")?;
                Ok(e)
            }
            _ => Err(self.err_at("query expression")),
        }
    }

    fn parse_proj_args(&mut self) -> PResult<(Vec<ProjItem>, bool)> {
        self.expect("(")?;
        let mut items = Vec::new();
        let mut ellipsis = false;
        if self.peek_text() != Some(")") {
            loop {
                if self.eat("...") {
                    ellipsis = true;
                } else {
                    items.push(self.parse_proj_item()?);
                }
                if !self.eat(",") {
                    break;
                }
            }
        }
        self.expect(")")?;
        Ok((items, ellipsis))
    }

    fn parse_proj_item(&mut self) -> PResult<ProjItem> {
        let name = self.expect_attr_name()?;
        if !self.eat(":") {
            return Ok(ProjItem::Keep(name));
        }
        let expr = self.parse_scalar()?;
        if let ScalarExpr::Attr(old) = expr {
            Ok(ProjItem::Rename { new: name, old })
        } else {
            Ok(ProjItem::Compute { name, expr })
        }
    }

    /// Arguments of `.aggr(...)`: exactly one query-expression operand, the
    /// rest are projection items in any position (the paper occasionally
    /// leads with a bare retained attribute).
    fn parse_aggr_args(&mut self, input: QueryExpr) -> PResult<QueryExpr> {
        self.expect("(")?;
        let mut items = Vec::new();
        let mut group: Option<QueryExpr> = None;
        if self.peek_text() != Some(")") {
            loop {
                let is_query = matches!(
                    self.peek(),
                    Some(t) if t.text == "U"
                        || t.text == "("
                        || (t.kind == TokenKind::Identifier && is_entity_name(&t.text))
                );
                if is_query {
                    if group.is_some() {
                        return Err(self.err_at("a single aggregated operand"));
                    }
                    group = Some(self.parse_query_expr()?);
                } else {
                    items.push(self.parse_proj_item()?);
                }
                if !self.eat(",") {
                    break;
                }
            }
        }
        self.expect(")")?;
        let group = group.ok_or_else(|| self.err_at("aggregated operand"))?;
        Ok(QueryExpr::Aggregate {
            input: Box::new(input),
            group: Box::new(group),
            items,
        })
    }

    // ---- datatypes ----

    fn parse_datatype(&mut self) -> PResult<Datatype> {
        let t = self.peek().ok_or_else(|| self.err_at("datatype"))?.clone();
        match t.text.as_str() {
            "int" => {
                self.advance();
                if self.peek_text() == Some("unsigned") {
                    self.advance();
                    Ok(Datatype::IntUnsigned)
                } else {
                    Ok(Datatype::Int)
                }
            }
            "double" => {
                self.advance();
                Ok(Datatype::Double)
            }
            "date" => {
                self.advance();
                Ok(Datatype::Date)
            }
            "datetime" => {
                self.advance();
                Ok(Datatype::Datetime)
            }
            "year" => {
                self.advance();
                Ok(Datatype::Year)
            }
            "decimal" => {
                self.advance();
                self.expect("(")?;
                let n = self.parse_small_uint()?;
                self.expect(",")?;
                let m = self.parse_small_uint()?;
                self.expect(")")?;
                if !(1..=65).contains(&n) || m >= n {
                    return Err(self.err_at("decimal(n,m) with 1 <= m < n <= 65"));
                }
                Ok(Datatype::Decimal(n as u8, m as u8))
            }
            "char" | "varchar" => {
                let kw = self.advance().unwrap().text;
                self.expect("(")?;
                let n = self.parse_small_uint()?;
                self.expect(")")?;
                if n < 1 {
                    return Err(self.err_at("length of at least 1"));
                }
                Ok(if kw == "char" {
                    Datatype::Char(n)
                } else {
                    Datatype::Varchar(n)
                })
            }
            "enum" => {
                self.advance();
                self.expect("(")?;
                let mut values = Vec::new();
                loop {
                    match self.peek() {
                        Some(t) if t.kind == TokenKind::Str => {
                            values.push(self.advance().unwrap().text)
                        }
                        _ => return Err(self.err_at("quoted enum value")),
                    }
                    if !self.eat(",") {
                        break;
                    }
                }
                self.expect(")")?;
                let mut uniq = values.clone();
                uniq.sort();
                uniq.dedup();
                if uniq.len() != values.len() {
                    return Err(self.err_at("distinct enum values"));
                }
                Ok(Datatype::Enum(values))
            }
            _ => Err(self.err_at("datatype")),
        }
    }

    fn parse_small_uint(&mut self) -> PResult<u32> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Number => {
                let text = self.advance().unwrap().text;
                text.parse().map_err(|_| self.err_at("small integer"))
            }
            _ => Err(self.err_at("integer")),
        }
    }

    // ---- declarations ----

    fn parse_declaration(&mut self) -> PResult<EntityDecl> {
        self.expect("::")?;
        let name = self.expect_qualified_name()?;
        let mut primary_items = Vec::new();
        let mut secondary_items = Vec::new();
        let mut has_divider = false;
        loop {
            match self.peek_text() {
                Some("---") => {
                    if has_divider {
                        return Err(self.err_at("at most one `---` divider"));
                    }
                    self.advance();
                    has_divider = true;
                }
                Some("->") => {
                    let item = DeclItem::Dependency(self.parse_dependency()?);
                    if has_divider {
                        secondary_items.push(item);
                    } else {
                        primary_items.push(item);
                    }
                }
                Some(_)
                    if self.peek().is_some_and(|t| {
                        t.kind == TokenKind::Identifier && is_attr_name(&t.text)
                    }) && self
                        .peek2()
                        .is_some_and(|t| t.text == ":" || t.text == "=") =>
                {
                    let item = DeclItem::Attr(self.parse_attr_item()?);
                    if has_divider {
                        secondary_items.push(item);
                    } else {
                        primary_items.push(item);
                    }
                }
                _ => break,
            }
        }
        Ok(EntityDecl {
            name,
            primary_items,
            secondary_items,
            has_divider,
        })
    }

    fn parse_dependency(&mut self) -> PResult<DependencyDeclItem> {
        self.expect("->")?;
        let mut unique = false;
        let mut nullable = false;
        if self.eat("[") {
            loop {
                match self.peek() {
                    Some(t) if t.text == "unique" => {
                        unique = true;
                        self.advance();
                    }
                    Some(t) if t.text == "nullable" => {
                        nullable = true;
                        self.advance();
                    }
                    _ => return Err(self.err_at("`unique` or `nullable`")),
                }
                if !self.eat(",") {
                    break;
                }
            }
            self.expect("]")?;
        }
        let target = if self.peek_text() == Some("master") {
            self.advance();
            DepTarget::Master
        } else {
            DepTarget::Expr(self.parse_query_expr()?)
        };
        Ok(DependencyDeclItem {
            unique,
            nullable,
            target,
        })
    }

    fn parse_attr_item(&mut self) -> PResult<AttrDeclItem> {
        let start_line = self.peek().map(|t| t.line).unwrap_or(0);
        let name = self.expect_attr_name()?;
        let default = if self.eat("=") {
            Some(self.parse_literal()?)
        } else {
            None
        };
        self.expect(":")?;
        let datatype = self.parse_datatype()?;
        // trailing comment on the same line
        let mut comment = None;
        if let Some(t) = self.tokens.get(self.pos) {
            if t.kind == TokenKind::Comment && t.line == start_line {
                comment = Some(t.text.clone());
                self.pos += 1;
            }
        }
        Ok(AttrDeclItem {
            name,
            datatype,
            default,
            comment,
        })
    }

    // ---- manipulations ----

    fn parse_manipulation(&mut self) -> PResult<Manipulation> {
        match self.peek_text() {
            Some("insert") => {
                self.advance();
                let entity = self.expect_qualified_name()?;
                self.expect("(")?;
                let mut attrs = Vec::new();
                loop {
                    attrs.push(self.expect_attr_name()?);
                    if !self.eat(",") {
                        break;
                    }
                }
                self.expect(")")?;
                self.expect(":")?;
                let mut rows = Vec::new();
                loop {
                    let tuple_err = self.err_at("row tuple");
                    self.expect("(")?;
                    let mut row = Vec::new();
                    if self.peek_text() != Some(")") {
                        loop {
                            row.push(self.parse_literal()?);
                            if !self.eat(",") {
                                break;
                            }
                        }
                    }
                    self.expect(")")?;
                    if row.len() != attrs.len() {
                        return Err(ParseError {
                            expected: format!("{} values per row", attrs.len()),
                            found: format!("{}", row.len()),
                            ..tuple_err
                        });
                    }
                    rows.push(row);
                    if !self.eat(",") {
                        break;
                    }
                }
                Ok(Manipulation::Insert {
                    entity,
                    attrs,
                    rows,
                })
            }
            Some("delete") => {
                self.advance();
                let entity = self.expect_qualified_name()?;
                let cond = self.parse_restriction_chain()?;
                Ok(Manipulation::Delete { entity, cond })
            }
            Some("update") => {
                self.advance();
                let entity = self.expect_qualified_name()?;
                let cond = self.parse_restriction_chain()?;
                self.expect(":")?;
                let mut assignments = Vec::new();
                loop {
                    let attr = self.expect_attr_name()?;
                    self.expect(":")?;
                    assignments.push((attr, self.parse_literal()?));
                    if !self.eat(",") {
                        break;
                    }
                }
                Ok(Manipulation::Update {
                    entity,
                    cond,
                    assignments,
                })
            }
            Some("populate") => {
                self.advance();
                let entity = self.expect_qualified_name()?;
                let mut make = Vec::new();
                if self.eat("(") {
                    loop {
                        let attr = self.expect_attr_name()?;
                        self.expect(":")?;
                        make.push((attr, self.parse_scalar()?));
                        if !self.eat(",") {
                            break;
                        }
                    }
                    self.expect(")")?;
                }
                Ok(Manipulation::Populate { entity, make })
            }
            _ => Err(self.err_at("manipulation keyword")),
        }
    }

    /// `& cond` / `\ cond` chain after `delete Entity` or `update Entity`,
    /// folded into one conjunction.
    fn parse_restriction_chain(&mut self) -> PResult<Condition> {
        let mut conds = Vec::new();
        loop {
            match self.peek_text() {
                Some("&") => {
                    self.advance();
                    conds.push(self.parse_condition()?);
                }
                Some("\\") => {
                    self.advance();
                    conds.push(Condition::NotFn(Box::new(self.parse_condition()?)));
                }
                _ => break,
            }
        }
        if conds.len() == 1 {
            Ok(conds.pop().unwrap())
        } else {
            Ok(Condition::AndFn(conds))
        }
    }

    // ---- statements ----

    fn parse_statement(&mut self) -> PResult<Statement> {
        match self.peek() {
            Some(t) if t.text == "::" => Ok(Statement::Decl(self.parse_declaration()?)),
            Some(t)
                if matches!(t.text.as_str(), "insert" | "delete" | "update" | "populate") =>
            {
                Ok(Statement::Manip(self.parse_manipulation()?))
            }
            Some(t)
                if t.kind == TokenKind::Identifier
                    && is_entity_name(&t.text)
                    && self.peek2().is_some_and(|n| n.text == "=") =>
            {
                let name = self.advance().unwrap().text;
                self.advance(); // `=`
                Ok(Statement::Assign(name, self.parse_query_expr()?))
            }
            Some(_) => Ok(Statement::Query(self.parse_query_expr()?)),
            None => Err(self.err_at("statement")),
        }
    }

    /// Skip to the next plausible statement boundary after an error: the
    /// next `::`, manipulation keyword, or token following a blank line.
    fn recover(&mut self) {
        let mut prev_line = self.peek().map(|t| t.line);
        self.advance();
        while let Some(t) = self.peek() {
            if t.text == "::"
                || matches!(t.text.as_str(), "insert" | "delete" | "update" | "populate")
                || prev_line.is_some_and(|p| t.line >= p + 2)
            {
                return;
            }
            prev_line = Some(t.line);
            self.advance();
        }
    }
}

fn number_literal(
    text: &str,
    negative: bool,
    err: impl Fn() -> ParseError,
) -> PResult<Literal> {
    if text.contains('.') {
        let v: f64 = text.parse().map_err(|_| err())?;
        Ok(Literal::Double(if negative { -v } else { v }))
    } else {
        let v: i64 = text.parse().map_err(|_| err())?;
        Ok(Literal::Int(if negative { -v } else { v }))
    }
}

/// Parse a whole script, collecting every error and recovering at statement
/// boundaries.
pub fn parse_script_with_recovery(source: &str) -> (Vec<Statement>, Vec<ParseError>) {
    let tokens = match tokenize(source) {
        Ok(t) => t,
        Err(e) => return (Vec::new(), vec![e.into()]),
    };
    let mut parser = Parser::new(tokens);
    let mut statements = Vec::new();
    let mut errors = Vec::new();
    while !parser.at_end() {
        match parser.parse_statement() {
            Ok(s) => statements.push(s),
            Err(e) => {
                errors.push(e);
                parser.recover();
            }
        }
    }
    (statements, errors)
}

/// Parse a whole script; any error fails the parse (all are reported).
pub fn parse_script(source: &str) -> Result<Vec<Statement>, Vec<ParseError>> {
    let (statements, errors) = parse_script_with_recovery(source);
    if errors.is_empty() {
        Ok(statements)
    } else {
        Err(errors)
    }
}

/// Parse a single query expression; trailing input is an error.
pub fn parse_query(source: &str) -> Result<QueryExpr, ParseError> {
    let tokens = tokenize(source).map_err(ParseError::from)?;
    let mut parser = Parser::new(tokens);
    let expr = parser.parse_query_expr()?;
    if !parser.at_end() {
        return Err(parser.err_at("end of query"));
    }
    Ok(expr)
}

/// Parse exactly one statement; trailing input is an error.
pub fn parse_statement_text(source: &str) -> Result<Statement, ParseError> {
    let tokens = tokenize(source).map_err(ParseError::from)?;
    let mut parser = Parser::new(tokens);
    let stmt = parser.parse_statement()?;
    if !parser.at_end() {
        return Err(parser.err_at("end of statement"));
    }
    Ok(stmt)
}

/// Parse a single condition (used by interactive tooling).
pub fn parse_condition(source: &str) -> Result<Condition, ParseError> {
    let tokens = tokenize(source).map_err(ParseError::from)?;
    let mut parser = Parser::new(tokens);
    let cond = parser.parse_condition()?;
    if !parser.at_end() {
        return Err(parser.err_at("end of condition"));
    }
    Ok(cond)
}
