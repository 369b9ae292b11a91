//! Parser for the `.dartwin` textual format.
//!
//! ```text
//! model      := "dartwin" STRING ["extends" STRING] "{" goal* goaledge* system "}"
//! goal       := "goal" ID "{" ("title" STRING)? poi+ ("constraint" STRING)? "}"
//! poi        := "poi" ID ":" ID
//! goaledge   := "relation" ID relkind ID ["label" STRING] ["combinator" ("union"|"strictest")]
//! relkind    := "generalizes" | "supports" | "conflicts"
//! system     := ("system"|"at") STRING "{" port* (dt | system)* flow* "}"
//! dt         := "dt" ID "{" port* ("behavior" STRING)? ("satisfies" ID)* "}"
//! port       := ("in"|"out") ID ":" ID "[" ("monitoring"|"control"|"user"|"inter_dt") "]"
//! flow       := "flow" pathref "->" pathref
//! pathref    := ID "." ID | "boundary" "." ID
//! ```
//!
//! Keywords are case-sensitive, `//` starts a line comment, identifiers match
//! `[A-Za-z_][A-Za-z0-9_]*`, strings are double-quoted. Every syntax or
//! referential error carries a span pointing into the offending token; no
//! partial model is ever returned together with errors.

mod constraint_parse;
pub mod lexer;

pub use lexer::{SourceSpan, Token, TokenKind};

use std::collections::BTreeMap;

use crate::model::{
    is_registered_unit, Combinator, Direction, Dt, DtGoalLink, Flow, Goal, GoalEdge,
    GoalEdgeKind, Model, Poi, Port, PortRef, PortRole, SystemKind, TwinSystem,
};

pub use constraint_parse::parse_constraint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone)]
pub struct ParseDiagnostic {
    pub severity: Severity,
    pub message: String,
    pub span: SourceSpan,
}

impl std::fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{}: {sev}: {}", self.span, self.message)
    }
}

pub fn parse_model(text: &str) -> Result<Model, Vec<ParseDiagnostic>> {
    parse_model_named(text, "<input>")
}

pub fn parse_model_named(text: &str, file: &str) -> Result<Model, Vec<ParseDiagnostic>> {
    let tokens = match lexer::lex(text, file) {
        Ok(t) => t,
        Err(e) => {
            return Err(vec![ParseDiagnostic {
                severity: Severity::Error,
                message: e.message,
                span: e.span,
            }])
        }
    };
    let mut p = Parser {
        tokens,
        pos: 0,
        file: file.to_string(),
        diagnostics: Vec::new(),
        id_spans: Vec::new(),
        constraint_spans: BTreeMap::new(),
    };
    match p.model() {
        Ok(mut model) => {
            model.canonicalize();
            p.post_checks(&model);
            if p.diagnostics.is_empty() {
                debug_assert!(model.check_invariants().is_empty());
                Ok(model)
            } else {
                Err(p.diagnostics)
            }
        }
        Err(d) => {
            p.diagnostics.push(d);
            Err(p.diagnostics)
        }
    }
}

/// Parse a single `goal ... { ... }` block on its own.
pub fn parse_goal_fragment(text: &str) -> Result<Goal, String> {
    fragment(text, |p| p.goal())
}

/// Parse a single `dt ... { ... }` block; returns the dt and the goal ids it
/// satisfies (resolved against the target model by the caller).
pub fn parse_dt_fragment(text: &str) -> Result<(Dt, Vec<String>), String> {
    let mut links = Vec::new();
    let dt = fragment(text, |p| p.dt(&mut links))?;
    Ok((dt, links.into_iter().map(|l| l.goal).collect()))
}

/// Parse a single port declaration like `in presence: bool [monitoring]`.
pub fn parse_port_fragment(text: &str) -> Result<Port, String> {
    fragment(text, |p| p.port("fragment"))
}

/// Parse a single `relation ...` line.
pub fn parse_relation_fragment(text: &str) -> Result<GoalEdge, String> {
    fragment(text, |p| p.goal_edge())
}

/// Parse `owner.port -> owner.port`; the owner word `boundary` is preserved
/// verbatim for the caller to resolve against the right system.
pub fn parse_flow_fragment(text: &str) -> Result<Flow, String> {
    fragment(text, |p| {
        let from = p.raw_pathref()?;
        p.expect_token(TokenKind::Arrow, "`->`")?;
        let to = p.raw_pathref()?;
        Ok(Flow { from, to })
    })
}

/// Parse `owner.port` with `boundary` preserved verbatim.
pub fn parse_pathref_fragment(text: &str) -> Result<PortRef, String> {
    fragment(text, |p| p.raw_pathref())
}

fn fragment<T>(
    text: &str,
    f: impl FnOnce(&mut Parser) -> Result<T, ParseDiagnostic>,
) -> Result<T, String> {
    let tokens = lexer::lex(text, "<fragment>").map_err(|e| e.message)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        file: "<fragment>".to_string(),
        diagnostics: Vec::new(),
        id_spans: Vec::new(),
        constraint_spans: BTreeMap::new(),
    };
    let out = f(&mut p).map_err(|d| d.message)?;
    if let Some(d) = p.diagnostics.first() {
        return Err(d.message.clone());
    }
    if let Some(t) = p.peek() {
        return Err(format!("unexpected {} after fragment", t.describe()));
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    file: String,
    diagnostics: Vec<ParseDiagnostic>,
    /// Element id -> defining token span, in declaration order.
    id_spans: Vec<(String, SourceSpan)>,
    /// Goal id -> span of its constraint string token.
    constraint_spans: BTreeMap<String, SourceSpan>,
}

impl Parser {
    fn eof_span(&self) -> SourceSpan {
        self.tokens.last().map(|t| t.span.clone()).unwrap_or(SourceSpan {
            file: self.file.clone(),
            line: 1,
            column: 1,
            length: 1,
        })
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_ident(&self) -> Option<&str> {
        match self.peek().map(|t| &t.kind) {
            Some(TokenKind::Ident(s)) => Some(s),
            _ => None,
        }
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, message: impl Into<String>) -> ParseDiagnostic {
        let span = self.peek().map(|t| t.span.clone()).unwrap_or_else(|| self.eof_span());
        ParseDiagnostic { severity: Severity::Error, message: message.into(), span }
    }

    fn semantic_error(&mut self, message: impl Into<String>, span: SourceSpan) {
        self.diagnostics.push(ParseDiagnostic {
            severity: Severity::Error,
            message: message.into(),
            span,
        });
    }

    fn expect_keyword(&mut self, word: &str) -> Result<Token, ParseDiagnostic> {
        match self.peek() {
            Some(Token { kind: TokenKind::Ident(s), .. }) if s == word => Ok(self.bump().unwrap()),
            Some(t) => Err(ParseDiagnostic {
                severity: Severity::Error,
                message: format!("expected `{word}`, found {}", t.describe()),
                span: t.span.clone(),
            }),
            None => Err(self.error_here(format!("expected `{word}`, found end of input"))),
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<(String, SourceSpan), ParseDiagnostic> {
        match self.peek() {
            Some(Token { kind: TokenKind::Ident(s), span }) => {
                let out = (s.clone(), span.clone());
                self.bump();
                Ok(out)
            }
            Some(t) => Err(ParseDiagnostic {
                severity: Severity::Error,
                message: format!("expected {what}, found {}", t.describe()),
                span: t.span.clone(),
            }),
            None => Err(self.error_here(format!("expected {what}, found end of input"))),
        }
    }

    fn expect_string(&mut self, what: &str) -> Result<(String, SourceSpan), ParseDiagnostic> {
        match self.peek() {
            Some(Token { kind: TokenKind::Str(s), span }) => {
                let out = (s.clone(), span.clone());
                self.bump();
                Ok(out)
            }
            Some(t) => Err(ParseDiagnostic {
                severity: Severity::Error,
                message: format!("expected {what}, found {}", t.describe()),
                span: t.span.clone(),
            }),
            None => Err(self.error_here(format!("expected {what}, found end of input"))),
        }
    }

    fn expect_token(&mut self, kind: TokenKind, what: &str) -> Result<Token, ParseDiagnostic> {
        match self.peek() {
            Some(t) if t.kind == kind => Ok(self.bump().unwrap()),
            Some(t) => Err(ParseDiagnostic {
                severity: Severity::Error,
                message: format!("expected {what}, found {}", t.describe()),
                span: t.span.clone(),
            }),
            None => Err(self.error_here(format!("expected {what}, found end of input"))),
        }
    }

    fn model(&mut self) -> Result<Model, ParseDiagnostic> {
        self.expect_keyword("dartwin")?;
        let (name, _) = self.expect_string("model name string")?;
        let extends_name = if self.peek_ident() == Some("extends") {
            self.bump();
            Some(self.expect_string("parent model name string")?.0)
        } else {
            None
        };
        self.expect_token(TokenKind::LBrace, "`{`")?;

        let mut goals = Vec::new();
        while self.peek_ident() == Some("goal") {
            goals.push(self.goal()?);
        }
        let mut goal_edges = Vec::new();
        while self.peek_ident() == Some("relation") {
            goal_edges.push(self.goal_edge()?);
        }
        let mut dt_goal_links = Vec::new();
        let root_system = match self.peek_ident() {
            Some("system") | Some("at") => self.system(&mut dt_goal_links)?,
            _ => return Err(self.error_here("expected `system` or `at` block")),
        };
        self.expect_token(TokenKind::RBrace, "`}`")?;
        if let Some(t) = self.peek() {
            return Err(ParseDiagnostic {
                severity: Severity::Error,
                message: format!("unexpected {} after model", t.describe()),
                span: t.span.clone(),
            });
        }

        let mut model = Model::new(name, root_system);
        model.extends_name = extends_name;
        model.goals = goals;
        model.goal_edges = goal_edges;
        model.dt_goal_links = dt_goal_links;
        Ok(model)
    }

    fn goal(&mut self) -> Result<Goal, ParseDiagnostic> {
        self.expect_keyword("goal")?;
        let (id, id_span) = self.expect_ident("goal identifier")?;
        self.id_spans.push((id.clone(), id_span.clone()));
        self.expect_token(TokenKind::LBrace, "`{`")?;

        let title = if self.peek_ident() == Some("title") {
            self.bump();
            self.expect_string("goal title string")?.0
        } else {
            id.clone()
        };

        let mut pois = Vec::new();
        while self.peek_ident() == Some("poi") {
            self.bump();
            let (poi_name, name_span) = self.expect_ident("poi name")?;
            self.expect_token(TokenKind::Colon, "`:`")?;
            let (unit, unit_span) = self.expect_ident("unit")?;
            if !is_registered_unit(&unit) {
                self.semantic_error(format!("unregistered unit `{unit}`"), unit_span);
            }
            if pois.iter().any(|p: &Poi| p.name == poi_name) {
                self.semantic_error(
                    format!("goal `{id}` declares poi `{poi_name}` more than once"),
                    name_span,
                );
            }
            pois.push(Poi { name: poi_name, unit });
        }
        if pois.is_empty() {
            self.semantic_error(format!("goal `{id}` must declare at least one poi"), id_span);
        }

        let constraint = if self.peek_ident() == Some("constraint") {
            self.bump();
            let (text, span) = self.expect_string("constraint string")?;
            self.constraint_spans.insert(id.clone(), span.clone());
            match constraint_parse::parse_constraint(&text) {
                Ok(c) => Some(c),
                Err(e) => {
                    self.semantic_error(
                        e.message,
                        SourceSpan {
                            file: span.file,
                            line: span.line,
                            // +1 to step over the opening quote.
                            column: span.column + 1 + e.offset as u32,
                            length: e.length as u32,
                        },
                    );
                    None
                }
            }
        } else {
            None
        };

        self.expect_token(TokenKind::RBrace, "`}`")?;
        Ok(Goal { id, title, pois, constraint })
    }

    fn goal_edge(&mut self) -> Result<GoalEdge, ParseDiagnostic> {
        self.expect_keyword("relation")?;
        let (source, _) = self.expect_ident("goal identifier")?;
        let (kind_word, kind_span) = self.expect_ident("relation kind")?;
        let kind = match kind_word.as_str() {
            "generalizes" => GoalEdgeKind::Generalization,
            "supports" => GoalEdgeKind::PositiveRelation,
            "conflicts" => GoalEdgeKind::Conflict,
            other => {
                return Err(ParseDiagnostic {
                    severity: Severity::Error,
                    message: format!(
                        "expected `generalizes`, `supports` or `conflicts`, found `{other}`"
                    ),
                    span: kind_span,
                })
            }
        };
        let (target, target_span) = self.expect_ident("goal identifier")?;
        let mut label = None;
        if self.peek_ident() == Some("label") {
            self.bump();
            label = Some(self.expect_string("label string")?.0);
        }
        let mut combinator = None;
        if self.peek_ident() == Some("combinator") {
            self.bump();
            let (word, span) = self.expect_ident("`union` or `strictest`")?;
            combinator = match word.as_str() {
                "union" => Some(Combinator::Union),
                "strictest" => Some(Combinator::Strictest),
                other => {
                    return Err(ParseDiagnostic {
                        severity: Severity::Error,
                        message: format!("expected `union` or `strictest`, found `{other}`"),
                        span,
                    })
                }
            };
        }
        let edge = GoalEdge { kind, source, target, label, combinator };
        self.id_spans.push((edge.id(), target_span));
        Ok(edge)
    }

    fn system(&mut self, links: &mut Vec<DtGoalLink>) -> Result<TwinSystem, ParseDiagnostic> {
        let kind = match self.peek_ident() {
            Some("system") => SystemKind::TwinSystem,
            Some("at") => SystemKind::ActualTwin,
            _ => return Err(self.error_here("expected `system` or `at`")),
        };
        self.bump();
        let (name, name_span) = self.expect_string("system name string")?;
        let mut sys = TwinSystem::new(name, kind);
        self.id_spans.push((sys.id.clone(), name_span));
        self.expect_token(TokenKind::LBrace, "`{`")?;

        while matches!(self.peek_ident(), Some("in") | Some("out")) {
            let port = self.port(&sys.id)?;
            sys.ports.push(port);
        }
        loop {
            match self.peek_ident() {
                Some("dt") => {
                    if sys.kind == SystemKind::ActualTwin {
                        return Err(self.error_here(format!(
                            "actual twin `{}` must not contain dts or subsystems",
                            sys.id
                        )));
                    }
                    let dt = self.dt(links)?;
                    sys.dts.push(dt);
                }
                Some("system") | Some("at") => {
                    if sys.kind == SystemKind::ActualTwin {
                        return Err(self.error_here(format!(
                            "actual twin `{}` must not contain dts or subsystems",
                            sys.id
                        )));
                    }
                    let sub = self.system(links)?;
                    sys.subsystems.push(sub);
                }
                _ => break,
            }
        }
        while self.peek_ident() == Some("flow") {
            let flow = self.flow(&sys)?;
            sys.flows.push(flow);
        }
        self.expect_token(TokenKind::RBrace, "`}`")?;
        Ok(sys)
    }

    fn dt(&mut self, links: &mut Vec<DtGoalLink>) -> Result<Dt, ParseDiagnostic> {
        self.expect_keyword("dt")?;
        let (id, id_span) = self.expect_ident("dt identifier")?;
        self.id_spans.push((id.clone(), id_span));
        let mut dt = Dt::new(id);
        self.expect_token(TokenKind::LBrace, "`{`")?;
        while matches!(self.peek_ident(), Some("in") | Some("out")) {
            let port = self.port(&dt.id)?;
            dt.ports.push(port);
        }
        if self.peek_ident() == Some("behavior") {
            self.bump();
            dt.behavior_key = Some(self.expect_string("behavior key string")?.0);
        }
        while self.peek_ident() == Some("satisfies") {
            self.bump();
            let (goal, goal_span) = self.expect_ident("goal identifier")?;
            let link = DtGoalLink { dt: dt.id.clone(), goal };
            self.id_spans.push((link.id(), goal_span));
            links.push(link);
        }
        self.expect_token(TokenKind::RBrace, "`}`")?;
        Ok(dt)
    }

    fn port(&mut self, owner: &str) -> Result<Port, ParseDiagnostic> {
        let direction = match self.peek_ident() {
            Some("in") => Direction::Input,
            Some("out") => Direction::Output,
            _ => return Err(self.error_here("expected `in` or `out`")),
        };
        self.bump();
        let (name, name_span) = self.expect_ident("port name")?;
        self.id_spans.push((format!("{owner}.{name}"), name_span));
        self.expect_token(TokenKind::Colon, "`:`")?;
        let (unit, unit_span) = self.expect_ident("unit")?;
        if !is_registered_unit(&unit) {
            self.semantic_error(format!("unregistered unit `{unit}`"), unit_span);
        }
        self.expect_token(TokenKind::LBracket, "`[`")?;
        let (role_word, role_span) = self.expect_ident("port role")?;
        let role = PortRole::from_keyword(&role_word).ok_or_else(|| ParseDiagnostic {
            severity: Severity::Error,
            message: format!(
                "expected `monitoring`, `control`, `user` or `inter_dt`, found `{role_word}`"
            ),
            span: role_span,
        })?;
        self.expect_token(TokenKind::RBracket, "`]`")?;
        Ok(Port { name, direction, role, signal_unit: unit })
    }

    fn flow(&mut self, scope: &TwinSystem) -> Result<Flow, ParseDiagnostic> {
        self.expect_keyword("flow")?;
        let from = self.pathref(scope)?;
        self.expect_token(TokenKind::Arrow, "`->`")?;
        let to = self.pathref(scope)?;
        let flow = Flow { from: from.0, to: to.0 };
        self.check_flow_endpoint(scope, &flow.from, &from.1, &from.2, true);
        self.check_flow_endpoint(scope, &flow.to, &to.1, &to.2, false);
        self.check_flow_units(scope, &flow, &to.2);
        self.id_spans.push((flow.id(), from.1.clone()));
        Ok(flow)
    }

    /// Returns the resolved reference plus the owner and port token spans.
    fn pathref(
        &mut self,
        scope: &TwinSystem,
    ) -> Result<(PortRef, SourceSpan, SourceSpan), ParseDiagnostic> {
        let (owner_word, owner_span) = self.expect_ident("port owner")?;
        self.expect_token(TokenKind::Dot, "`.`")?;
        let (port, port_span) = self.expect_ident("port name")?;
        let owner = if owner_word == "boundary" { scope.id.clone() } else { owner_word };
        Ok((PortRef { owner, port }, owner_span, port_span))
    }

    /// Pathref without scope resolution; `boundary` stays literal.
    fn raw_pathref(&mut self) -> Result<PortRef, ParseDiagnostic> {
        let (owner, _) = self.expect_ident("port owner")?;
        self.expect_token(TokenKind::Dot, "`.`")?;
        let (port, _) = self.expect_ident("port name")?;
        Ok(PortRef { owner, port })
    }

    fn check_flow_endpoint(
        &mut self,
        scope: &TwinSystem,
        r: &PortRef,
        owner_span: &SourceSpan,
        port_span: &SourceSpan,
        is_source: bool,
    ) {
        let on_boundary = r.owner == scope.id;
        let resolved = if on_boundary {
            scope.port(&r.port)
        } else if let Some(dt) = scope.dts.iter().find(|d| d.id == r.owner) {
            dt.port(&r.port)
        } else if let Some(sub) = scope.subsystems.iter().find(|s| s.id == r.owner) {
            sub.port(&r.port)
        } else {
            self.semantic_error(
                format!("`{}` is not the boundary, a dt or a subsystem of `{}`", r.owner, scope.id),
                owner_span.clone(),
            );
            return;
        };
        let Some(port) = resolved else {
            self.semantic_error(
                format!("`{}` has no port named `{}`", r.owner, r.port),
                port_span.clone(),
            );
            return;
        };
        // A boundary input is a source for the inside; a boundary output a sink.
        let ok = match (is_source, on_boundary) {
            (true, true) => port.direction == Direction::Input,
            (true, false) => port.direction == Direction::Output,
            (false, true) => port.direction == Direction::Output,
            (false, false) => port.direction == Direction::Input,
        };
        if !ok {
            let expected = if is_source { "source" } else { "sink" };
            self.semantic_error(
                format!("port `{}` cannot be used as a flow {expected} here", r.qualified()),
                port_span.clone(),
            );
        }
    }

    fn check_flow_units(&mut self, scope: &TwinSystem, flow: &Flow, to_span: &SourceSpan) {
        let lookup = |r: &PortRef| -> Option<&Port> {
            if r.owner == scope.id {
                scope.port(&r.port)
            } else if let Some(dt) = scope.dts.iter().find(|d| d.id == r.owner) {
                dt.port(&r.port)
            } else {
                scope.subsystems.iter().find(|s| s.id == r.owner).and_then(|s| s.port(&r.port))
            }
        };
        if let (Some(from), Some(to)) = (lookup(&flow.from), lookup(&flow.to)) {
            if from.signal_unit != to.signal_unit {
                self.semantic_error(
                    format!(
                        "flow connects unit `{}` to unit `{}`",
                        from.signal_unit, to.signal_unit
                    ),
                    to_span.clone(),
                );
            }
        }
    }

    fn span_for(&self, id: &str) -> SourceSpan {
        self.id_spans
            .iter()
            .rev()
            .find(|(eid, _)| eid == id)
            .map(|(_, s)| s.clone())
            .unwrap_or_else(|| self.eof_span())
    }

    /// Checks that need the whole model: duplicate ids, goal-edge referential
    /// integrity and acyclicity, link targets, constraint PoI visibility.
    fn post_checks(&mut self, model: &Model) {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for (id, _) in model.elements() {
            *counts.entry(id).or_insert(0) += 1;
        }
        for (id, n) in counts {
            if n > 1 {
                let span = self.span_for(&id);
                self.semantic_error(format!("identifier `{id}` is declared {n} times"), span);
            }
        }

        for e in &model.goal_edges {
            if e.source == e.target {
                let span = self.span_for(&e.id());
                self.semantic_error(
                    format!("relation connects goal `{}` to itself", e.source),
                    span,
                );
            }
            for g in [&e.source, &e.target] {
                if model.goal(g).is_none() {
                    let span = self.span_for(&e.id());
                    self.semantic_error(format!("relation names unknown goal `{g}`"), span);
                }
            }
        }
        for l in &model.dt_goal_links {
            if model.goal(&l.goal).is_none() {
                let span = self.span_for(&l.id());
                self.semantic_error(format!("`satisfies` names unknown goal `{}`", l.goal), span);
            }
        }
        for v in model.check_invariants() {
            if v.code == "GOAL-EDGE-CYCLE" {
                let span = self.span_for(v.elements.first().map(String::as_str).unwrap_or(""));
                self.semantic_error(v.message, span);
            }
        }
        for g in &model.goals {
            let Some(c) = &g.constraint else { continue };
            let mut visible: Vec<&str> = g.pois.iter().map(|p| p.name.as_str()).collect();
            for anc in model.generalization_ancestors(&g.id) {
                visible.extend(anc.pois.iter().map(|p| p.name.as_str()));
            }
            for name in c.referenced_pois() {
                if !visible.contains(&name.as_str()) {
                    let span = self
                        .constraint_spans
                        .get(&g.id)
                        .cloned()
                        .unwrap_or_else(|| self.span_for(&g.id));
                    self.semantic_error(
                        format!("constraint of goal `{}` references undeclared poi `{name}`", g.id),
                        span,
                    );
                }
            }
        }
    }
}
