//! Recursive-descent parser for `.dg` grammars.
//!
//! Errors are collected as diagnostics. After an error the parser skips to the
//! next item at the enclosing brace depth, so one malformed item produces one
//! diagnostic and parsing continues.

use std::sync::Arc;

use super::lexer::{tokenize, Tok, Token};
use crate::ast::*;
use crate::diag::{Diagnostic, DiagnosticKind, SourceSpan};

const MAX_DEPTH: usize = 128;

/// Parse a grammar. Returns the model, or every diagnostic found; never both.
pub fn parse_grammar(file: &str, src: &str) -> Result<GrammarModel, Vec<Diagnostic>> {
    let file: Arc<str> = Arc::from(file);
    let (tokens, mut diags) = tokenize(&file, src);
    if tokens.len() == 1 && diags.is_empty() {
        let span = tokens[0].span.clone();
        return Err(vec![Diagnostic::error(
            DiagnosticKind::EmptyGrammar,
            "grammar contains no declarations",
        )
        .at(&span)]);
    }
    let mut p = Parser::new(tokens, default_name(&file));
    let model = p.grammar();
    diags.extend(p.diags);
    if diags.is_empty() {
        Ok(model)
    } else {
        Err(diags)
    }
}

/// Parse a standalone expression (used for seeds and tests).
pub fn parse_expr(src: &str) -> Result<Expr, Vec<Diagnostic>> {
    let file: Arc<str> = Arc::from("<expr>");
    let (tokens, mut diags) = tokenize(&file, src);
    let mut p = Parser::new(tokens, String::new());
    let e = p.expr();
    if e.is_ok() && !p.at(&Tok::Eof) {
        p.error_expected("end of expression");
    }
    diags.extend(p.diags);
    match e {
        Ok(e) if diags.is_empty() => Ok(e),
        _ => Err(diags),
    }
}

fn default_name(file: &str) -> String {
    let stem = std::path::Path::new(file)
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("main");
    let cleaned: String = stem
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if cleaned.is_empty() || cleaned.starts_with(|c: char| c.is_ascii_digit()) {
        format!("g_{cleaned}")
    } else {
        cleaned
    }
}

type PResult<T> = Result<T, ()>;

const RESERVED: &[&str] = &[
    "grammar",
    "version",
    "import",
    "entry",
    "package",
    "public",
    "private",
    "class",
    "abstract",
    "extends",
    "implements",
    "interface",
    "field",
    "constructor",
    "method",
    "association",
    "multi",
    "rule",
    "forall",
    "lhs",
    "rhs",
    "invoke",
    "where",
    "set",
    "script",
    "activity",
    "start",
    "end",
    "apply",
    "required",
    "sub",
    "decide",
    "return",
    "let",
    "link",
    "unlink",
    "delete",
    "if",
    "else",
    "for",
    "in",
    "match",
    "true",
    "false",
    "null",
    "this",
    "new",
    "count",
    "int",
    "real",
    "bool",
    "string",
    "void",
    "list",
];

pub fn is_reserved(word: &str) -> bool {
    RESERVED.contains(&word)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    depth: usize,
    braces: usize,
    default_name: String,
    diags: Vec<Diagnostic>,
}

impl Parser {
    fn new(tokens: Vec<Token>, default_name: String) -> Self {
        Parser {
            tokens,
            pos: 0,
            depth: 0,
            braces: 0,
            default_name,
            diags: Vec::new(),
        }
    }

    // -- token helpers ------------------------------------------------------

    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn span(&self) -> SourceSpan {
        self.tokens[self.pos].span.clone()
    }

    fn at(&self, t: &Tok) -> bool {
        self.peek() == t
    }

    fn at_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        match t.tok {
            Tok::LBrace => self.braces += 1,
            Tok::RBrace => self.braces = self.braces.saturating_sub(1),
            Tok::Eof => return t,
            _ => {}
        }
        self.pos += 1;
        t
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.at(t) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.at_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn error_expected(&mut self, what: &str) {
        let span = self.span();
        // One report per position: a truncated input yields a single diagnostic.
        if self
            .diags
            .last()
            .and_then(|d| d.span.as_ref())
            .is_some_and(|s| s.offset == span.offset)
        {
            return;
        }
        let found = self.peek().describe();
        self.diags.push(
            Diagnostic::error(
                DiagnosticKind::SyntaxError,
                format!("expected {what}, found {found}"),
            )
            .at(&span),
        );
    }

    fn expect(&mut self, t: Tok) -> PResult<SourceSpan> {
        if self.at(&t) {
            Ok(self.bump().span)
        } else {
            self.error_expected(&t.describe());
            Err(())
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<SourceSpan> {
        if self.at_kw(kw) {
            Ok(self.bump().span)
        } else {
            self.error_expected(&format!("`{kw}`"));
            Err(())
        }
    }

    fn ident(&mut self) -> PResult<(String, SourceSpan)> {
        match self.peek().clone() {
            Tok::Ident(s) if !is_reserved(&s) => {
                let span = self.bump().span;
                Ok((s, span))
            }
            _ => {
                self.error_expected("identifier");
                Err(())
            }
        }
    }

    /// Identifier or one of the allowed keywords (labels may be any word).
    fn word(&mut self) -> PResult<(String, SourceSpan)> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                let span = self.bump().span;
                Ok((s, span))
            }
            _ => {
                self.error_expected("identifier");
                Err(())
            }
        }
    }

    fn enter(&mut self) -> PResult<()> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            let span = self.span();
            self.diags.push(
                Diagnostic::error(
                    DiagnosticKind::NestingTooDeep,
                    format!("nesting deeper than {MAX_DEPTH} levels"),
                )
                .at(&span),
            );
            self.depth -= 1;
            return Err(());
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    /// Skip to the next token at brace depth `depth` that can begin an item
    /// (or past the closing brace of the enclosing block).
    fn recover(&mut self, depth: usize, starters: &[&str]) {
        loop {
            match self.peek() {
                Tok::Eof => return,
                Tok::RBrace if self.braces == depth => return,
                Tok::Semi if self.braces == depth => {
                    self.bump();
                    return;
                }
                Tok::RBrace if self.braces == depth + 1 => {
                    self.bump();
                    if !self.at(&Tok::Semi) {
                        return;
                    }
                }
                Tok::Ident(s) if self.braces == depth && starters.contains(&s.as_str()) => return,
                _ => {
                    self.bump();
                }
            }
        }
    }

    // -- grammar ------------------------------------------------------------

    fn grammar(&mut self) -> GrammarModel {
        let span = self.span();
        let mut model = GrammarModel {
            name: self.default_name.clone(),
            version: None,
            imports: Vec::new(),
            entry: None,
            packages: Vec::new(),
            rules: Vec::new(),
            activities: Vec::new(),
            span,
        };
        if self.at_kw("grammar") {
            let r: PResult<()> = (|| {
                self.bump();
                model.name = self.ident()?.0;
                if self.eat_kw("version") {
                    match self.peek().clone() {
                        Tok::Str(s) => {
                            self.bump();
                            model.version = Some(s);
                        }
                        _ => {
                            self.error_expected("version string");
                            return Err(());
                        }
                    }
                }
                self.expect(Tok::Semi)?;
                Ok(())
            })();
            if r.is_err() {
                self.recover(0, TOP_STARTERS);
            }
        }
        while !self.at(&Tok::Eof) {
            let start = self.pos;
            if self.top_item(&mut model).is_err() {
                self.recover(0, TOP_STARTERS);
            }
            if self.at(&Tok::RBrace) && self.braces == 0 {
                self.error_expected("declaration");
                self.bump();
            }
            if self.pos == start && !self.at(&Tok::Eof) {
                self.bump();
            }
        }
        model
    }

    fn top_item(&mut self, model: &mut GrammarModel) -> PResult<()> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Ident(kw) => match kw.as_str() {
                "import" => {
                    self.bump();
                    let (module, _) = self.ident()?;
                    self.expect(Tok::Semi)?;
                    model.imports.push(Import { module, span });
                }
                "entry" => {
                    self.bump();
                    let (activity, _) = self.ident()?;
                    self.expect(Tok::Semi)?;
                    model.entry = Some(EntryDecl { activity, span });
                }
                "package" => {
                    let p = self.package()?;
                    model.packages.push(p);
                }
                "rule" | "script" => {
                    let r = self.rule()?;
                    model.rules.push(r);
                }
                "activity" => {
                    self.bump();
                    let (name, _) = self.ident()?;
                    let a = self.activity_body(name, span)?;
                    model.activities.push(a);
                }
                _ => {
                    self.error_expected(
                        "`import`, `entry`, `package`, `rule`, `script` or `activity`",
                    );
                    return Err(());
                }
            },
            _ => {
                self.error_expected("declaration");
                return Err(());
            }
        }
        Ok(())
    }

    fn package(&mut self) -> PResult<PackageDef> {
        let span = self.expect_kw("package")?;
        let (name, _) = self.ident()?;
        let visibility = if self.eat_kw("public") {
            Visibility::Public
        } else {
            self.eat_kw("private");
            Visibility::Private
        };
        self.expect(Tok::LBrace)?;
        let depth = self.braces;
        let mut pkg = PackageDef {
            name,
            visibility,
            associations: Vec::new(),
            interfaces: Vec::new(),
            classes: Vec::new(),
            rules: Vec::new(),
            activities: Vec::new(),
            span,
        };
        while !self.at(&Tok::RBrace) && !self.at(&Tok::Eof) {
            let start = self.pos;
            if self.package_member(&mut pkg).is_err() {
                self.recover(depth, MEMBER_STARTERS);
            }
            if self.pos == start && !self.at(&Tok::RBrace) && !self.at(&Tok::Eof) {
                self.bump();
            }
        }
        self.expect(Tok::RBrace)?;
        Ok(pkg)
    }

    fn package_member(&mut self, pkg: &mut PackageDef) -> PResult<()> {
        let span = self.span();
        if self.at_kw("association") {
            self.bump();
            let (name, _) = self.ident()?;
            let multi = self.eat_kw("multi");
            self.expect(Tok::Semi)?;
            pkg.associations.push(AssociationDef { name, multi, span });
        } else if self.at_kw("interface") {
            pkg.interfaces.push(self.interface()?);
        } else if self.at_kw("class") || self.at_kw("abstract") {
            pkg.classes.push(self.class()?);
        } else if self.at_kw("rule") || self.at_kw("script") {
            pkg.rules.push(self.rule()?);
        } else if self.at_kw("activity") {
            self.bump();
            let (name, _) = self.ident()?;
            pkg.activities.push(self.activity_body(name, span)?);
        } else {
            self.error_expected(
                "`association`, `interface`, `class`, `rule`, `script` or `activity`",
            );
            return Err(());
        }
        Ok(())
    }

    fn name_list(&mut self) -> PResult<Vec<String>> {
        let mut out = vec![self.ident()?.0];
        while self.eat(&Tok::Comma) {
            out.push(self.ident()?.0);
        }
        Ok(out)
    }

    fn interface(&mut self) -> PResult<InterfaceDef> {
        let span = self.expect_kw("interface")?;
        let (name, _) = self.ident()?;
        let extends = if self.eat_kw("extends") {
            self.name_list()?
        } else {
            Vec::new()
        };
        self.expect(Tok::LBrace)?;
        let mut methods = Vec::new();
        while !self.at(&Tok::RBrace) {
            let mspan = self.expect_kw("method")?;
            let (mname, _) = self.ident()?;
            let params = self.params()?;
            self.expect(Tok::Colon)?;
            let ret = self.type_expr()?;
            self.expect(Tok::Semi)?;
            methods.push(MethodDef {
                name: mname,
                params,
                ret,
                visibility: Visibility::Public,
                body: MethodBody::Abstract,
                span: mspan,
            });
        }
        self.expect(Tok::RBrace)?;
        Ok(InterfaceDef {
            name,
            extends,
            methods,
            span,
        })
    }

    fn class(&mut self) -> PResult<ClassDef> {
        let span = self.span();
        let is_abstract = self.eat_kw("abstract");
        self.expect_kw("class")?;
        let (name, _) = self.ident()?;
        let parent = if self.eat_kw("extends") {
            Some(self.ident()?.0)
        } else {
            None
        };
        let implements = if self.eat_kw("implements") {
            self.name_list()?
        } else {
            Vec::new()
        };
        self.expect(Tok::LBrace)?;
        let mut class = ClassDef {
            name,
            is_abstract,
            parent,
            implements,
            fields: Vec::new(),
            constructors: Vec::new(),
            methods: Vec::new(),
            span,
        };
        while !self.at(&Tok::RBrace) {
            self.class_member(&mut class)?;
        }
        self.expect(Tok::RBrace)?;
        Ok(class)
    }

    fn class_member(&mut self, class: &mut ClassDef) -> PResult<()> {
        let span = self.span();
        let visibility = if self.eat_kw("private") {
            Visibility::Private
        } else {
            self.eat_kw("public");
            Visibility::Public
        };
        if self.eat_kw("field") {
            let (name, _) = self.ident()?;
            self.expect(Tok::Colon)?;
            let ty = self.type_expr()?;
            let default = if self.eat(&Tok::Assign) {
                Some(self.expr()?)
            } else {
                None
            };
            self.expect(Tok::Semi)?;
            class.fields.push(FieldDef {
                name,
                ty,
                visibility,
                default,
                span,
            });
        } else if self.eat_kw("constructor") {
            let params = self.params()?;
            let body = self.block()?;
            class.constructors.push(MethodDef {
                name: class.name.clone(),
                params,
                ret: TypeExpr::Void,
                visibility,
                body: MethodBody::Script(body),
                span,
            });
        } else {
            let is_abstract = self.eat_kw("abstract");
            self.expect_kw("method")?;
            let (name, _) = self.ident()?;
            let params = self.params()?;
            self.expect(Tok::Colon)?;
            let ret = self.type_expr()?;
            let body = if is_abstract {
                self.expect(Tok::Semi)?;
                MethodBody::Abstract
            } else if self.at_kw("activity") {
                let aspan = self.bump().span;
                MethodBody::Activity(self.activity_body(name.clone(), aspan)?)
            } else if self.at(&Tok::LBrace) {
                MethodBody::Script(self.block()?)
            } else {
                self.error_expected("method body (`{`, `activity`) or `abstract` modifier");
                return Err(());
            };
            class.methods.push(MethodDef {
                name,
                params,
                ret,
                visibility,
                body,
                span,
            });
        }
        Ok(())
    }

    fn params(&mut self) -> PResult<Vec<Param>> {
        self.expect(Tok::LParen)?;
        let mut params = Vec::new();
        if !self.at(&Tok::RParen) {
            loop {
                let (name, _) = self.ident()?;
                self.expect(Tok::Colon)?;
                let ty = self.type_expr()?;
                params.push(Param { name, ty });
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;
        Ok(params)
    }

    fn type_expr(&mut self) -> PResult<TypeExpr> {
        self.enter()?;
        let r = self.type_expr_inner();
        self.leave();
        r
    }

    fn type_expr_inner(&mut self) -> PResult<TypeExpr> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(match s.as_str() {
                    "int" => TypeExpr::Int,
                    "real" => TypeExpr::Real,
                    "bool" => TypeExpr::Bool,
                    "string" => TypeExpr::Str,
                    "void" => TypeExpr::Void,
                    "list" => {
                        self.expect(Tok::Lt)?;
                        let inner = self.type_expr()?;
                        self.expect(Tok::Gt)?;
                        TypeExpr::List(Box::new(inner))
                    }
                    other if is_reserved(other) => {
                        self.pos -= 1;
                        self.error_expected("type");
                        return Err(());
                    }
                    _ => TypeExpr::Named(s),
                })
            }
            _ => {
                self.error_expected("type");
                Err(())
            }
        }
    }

    // -- rules --------------------------------------------------------------

    fn rule(&mut self) -> PResult<Rule> {
        let span = self.span();
        if self.eat_kw("script") {
            let (name, _) = self.ident()?;
            let body = self.block()?;
            return Ok(Rule {
                name,
                kind: RuleKind::Script(ScriptRule { body }),
                span,
            });
        }
        self.expect_kw("rule")?;
        let (name, _) = self.ident()?;
        let mode = if self.eat_kw("forall") {
            ApplyMode::Forall
        } else {
            ApplyMode::FirstMatch
        };
        self.expect(Tok::LBrace)?;
        self.expect_kw("lhs")?;
        let lhs = self.pattern_block()?;
        let invoke = if self.at_kw("invoke") {
            let ispan = self.bump().span;
            let (receiver, _) = self.ident()?;
            self.expect(Tok::Dot)?;
            let (method, _) = self.ident()?;
            let args = self.args()?;
            self.expect(Tok::Semi)?;
            Some(Invocation {
                receiver,
                method,
                args,
                span: ispan,
            })
        } else {
            None
        };
        self.expect_kw("rhs")?;
        let rhs = self.rhs_block()?;
        self.expect(Tok::RBrace)?;
        Ok(Rule {
            name,
            kind: RuleKind::Pattern(Box::new(PatternRule {
                mode,
                lhs,
                invoke,
                rhs,
            })),
            span,
        })
    }

    /// `{ x: T; y; x -label-> y; where expr; }`
    fn pattern_block(&mut self) -> PResult<PatternAst> {
        self.expect(Tok::LBrace)?;
        let mut pat = PatternAst::default();
        while !self.at(&Tok::RBrace) {
            let span = self.span();
            if self.eat_kw("where") {
                pat.guards.push(self.expr()?);
                self.expect(Tok::Semi)?;
                continue;
            }
            let (name, _) = self.var_name()?;
            if self.at(&Tok::Minus) {
                let (label, dst) = self.edge_tail()?;
                pat.edges.push(PatEdge {
                    src: name,
                    label,
                    dst,
                    span,
                });
            } else {
                let ty = if self.eat(&Tok::Colon) {
                    Some(self.ident()?.0)
                } else {
                    None
                };
                pat.nodes.push(PatNode { name, ty, span });
            }
            self.expect(Tok::Semi)?;
        }
        self.expect(Tok::RBrace)?;
        Ok(pat)
    }

    /// Pattern variables may be `this` (pre-bound receiver) or any identifier.
    fn var_name(&mut self) -> PResult<(String, SourceSpan)> {
        if self.at_kw("this") {
            let span = self.bump().span;
            return Ok(("this".to_string(), span));
        }
        self.ident()
    }

    fn edge_tail(&mut self) -> PResult<(String, String)> {
        self.expect(Tok::Minus)?;
        let (label, _) = self.word()?;
        self.expect(Tok::Arrow)?;
        let (dst, _) = self.var_name()?;
        Ok((label, dst))
    }

    fn rhs_block(&mut self) -> PResult<RhsAst> {
        self.expect(Tok::LBrace)?;
        let mut rhs = RhsAst::default();
        while !self.at(&Tok::RBrace) {
            let span = self.span();
            if self.eat_kw("set") {
                let (var, _) = self.var_name()?;
                self.expect(Tok::Dot)?;
                let (field, _) = self.ident()?;
                self.expect(Tok::Assign)?;
                let value = self.expr()?;
                self.expect(Tok::Semi)?;
                rhs.sets.push(AttrAssign {
                    var,
                    field,
                    value,
                    span,
                });
                continue;
            }
            let (name, _) = self.var_name()?;
            if self.at(&Tok::Minus) {
                let (label, dst) = self.edge_tail()?;
                rhs.edges.push(PatEdge {
                    src: name,
                    label,
                    dst,
                    span,
                });
            } else {
                let kind = if self.eat(&Tok::Colon) {
                    RhsNodeKind::Create(self.ident()?.0)
                } else if self.eat(&Tok::Assign) {
                    self.expect_kw("new")?;
                    let (class, _) = self.ident()?;
                    let args = self.args()?;
                    RhsNodeKind::Construct { class, args }
                } else {
                    RhsNodeKind::Keep
                };
                rhs.nodes.push(RhsNode { name, kind, span });
            }
            self.expect(Tok::Semi)?;
        }
        self.expect(Tok::RBrace)?;
        Ok(rhs)
    }

    // -- activities ---------------------------------------------------------

    fn activity_body(&mut self, name: String, span: SourceSpan) -> PResult<Activity> {
        self.expect(Tok::LBrace)?;
        let mut act = Activity {
            name,
            rules: Vec::new(),
            nodes: Vec::new(),
            span,
        };
        while !self.at(&Tok::RBrace) {
            if self.at_kw("rule") || self.at_kw("script") {
                act.rules.push(self.rule()?);
                continue;
            }
            let nspan = self.span();
            if self.eat_kw("start") {
                self.expect(Tok::Arrow)?;
                let (next, _) = self.ident()?;
                self.expect(Tok::Semi)?;
                act.nodes.push(ActivityNode {
                    name: START_NODE.to_string(),
                    kind: NodeKind::Start { next },
                    span: nspan,
                });
                continue;
            }
            let (node_name, _) = self.ident()?;
            self.expect(Tok::Colon)?;
            let kind = self.node_kind()?;
            act.nodes.push(ActivityNode {
                name: node_name,
                kind,
                span: nspan,
            });
        }
        self.expect(Tok::RBrace)?;
        Ok(act)
    }

    fn node_kind(&mut self) -> PResult<NodeKind> {
        if self.eat_kw("end") {
            self.expect(Tok::Semi)?;
            return Ok(NodeKind::End);
        }
        if self.eat_kw("apply") {
            let (rule, _) = self.ident()?;
            let required = self.eat_kw("required");
            self.expect(Tok::Arrow)?;
            let (next, _) = self.ident()?;
            self.expect(Tok::Semi)?;
            return Ok(NodeKind::Apply {
                rule,
                required,
                next,
            });
        }
        if self.eat_kw("sub") {
            let (activity, _) = self.ident()?;
            self.expect(Tok::Arrow)?;
            let (next, _) = self.ident()?;
            self.expect(Tok::Semi)?;
            return Ok(NodeKind::Sub { activity, next });
        }
        if self.eat_kw("decide") {
            let guard = self.expr()?;
            self.expect(Tok::LBrace)?;
            let mut branches = Vec::new();
            while !self.at(&Tok::RBrace) {
                let span = self.span();
                let label = match self.peek().clone() {
                    Tok::Ident(s) if s == "true" => BranchLabel::True,
                    Tok::Ident(s) if s == "false" => BranchLabel::False,
                    Tok::Ident(s) if s == "else" => BranchLabel::Else,
                    Tok::Str(s) => BranchLabel::Text(s),
                    _ => {
                        self.error_expected("branch label (`true`, `false`, `else` or a string)");
                        return Err(());
                    }
                };
                self.bump();
                self.expect(Tok::Arrow)?;
                let (target, _) = self.ident()?;
                self.expect(Tok::Semi)?;
                branches.push(Branch {
                    label,
                    target,
                    span,
                });
            }
            self.expect(Tok::RBrace)?;
            return Ok(NodeKind::Decide { guard, branches });
        }
        if self.eat_kw("return") {
            let pattern = if self.at(&Tok::LBrace) {
                Some(self.pattern_block()?)
            } else {
                None
            };
            let value = self.expr()?;
            self.expect(Tok::Semi)?;
            return Ok(NodeKind::Return { pattern, value });
        }
        self.error_expected("`end`, `apply`, `sub`, `decide` or `return`");
        Err(())
    }

    // -- statements ---------------------------------------------------------

    fn block(&mut self) -> PResult<Block> {
        self.enter()?;
        let r = self.block_inner();
        self.leave();
        r
    }

    fn block_inner(&mut self) -> PResult<Block> {
        self.expect(Tok::LBrace)?;
        let mut stmts = Vec::new();
        while !self.at(&Tok::RBrace) {
            stmts.push(self.stmt()?);
        }
        self.expect(Tok::RBrace)?;
        Ok(stmts)
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let span = self.span();
        let kind = match self.peek().clone() {
            Tok::Ident(kw) if kw == "let" => {
                self.bump();
                let (name, _) = self.ident()?;
                let ty = if self.eat(&Tok::Colon) {
                    Some(self.type_expr()?)
                } else {
                    None
                };
                self.expect(Tok::Assign)?;
                let value = self.expr()?;
                self.expect(Tok::Semi)?;
                StmtKind::Let { name, ty, value }
            }
            Tok::Ident(kw) if kw == "link" || kw == "unlink" => {
                self.bump();
                let src = self.postfix()?;
                self.expect(Tok::Minus)?;
                let (label, _) = self.word()?;
                self.expect(Tok::Arrow)?;
                let dst = self.postfix()?;
                self.expect(Tok::Semi)?;
                if kw == "link" {
                    StmtKind::Link { src, label, dst }
                } else {
                    StmtKind::Unlink { src, label, dst }
                }
            }
            Tok::Ident(kw) if kw == "delete" => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::Semi)?;
                StmtKind::Delete(e)
            }
            Tok::Ident(kw) if kw == "if" => self.if_stmt()?,
            Tok::Ident(kw) if kw == "for" => {
                self.bump();
                if self.eat_kw("match") {
                    let pattern = self.pattern_block()?;
                    let body = self.block()?;
                    StmtKind::ForMatch { pattern, body }
                } else {
                    let (var, _) = self.ident()?;
                    self.expect_kw("in")?;
                    let from = self.expr()?;
                    let inclusive = if self.eat(&Tok::DotDotEq) {
                        true
                    } else {
                        self.expect(Tok::DotDot)?;
                        false
                    };
                    let to = self.expr()?;
                    let body = self.block()?;
                    StmtKind::ForRange {
                        var,
                        from,
                        to,
                        inclusive,
                        body,
                    }
                }
            }
            Tok::Ident(kw) if kw == "return" => {
                self.bump();
                let value = if self.at(&Tok::Semi) {
                    None
                } else {
                    Some(self.expr()?)
                };
                self.expect(Tok::Semi)?;
                StmtKind::Return(value)
            }
            _ => {
                let e = self.expr()?;
                if self.eat(&Tok::Assign) {
                    let value = self.expr()?;
                    self.expect(Tok::Semi)?;
                    match e.kind {
                        ExprKind::Name(name) => StmtKind::Assign { name, value },
                        ExprKind::Field(target, field) => StmtKind::SetField {
                            target: *target,
                            field,
                            value,
                        },
                        _ => {
                            self.diags.push(
                                Diagnostic::error(
                                    DiagnosticKind::SyntaxError,
                                    "left side of `=` must be a variable or a field",
                                )
                                .at(&e.span),
                            );
                            return Err(());
                        }
                    }
                } else {
                    self.expect(Tok::Semi)?;
                    StmtKind::Expr(e)
                }
            }
        };
        Ok(Stmt { kind, span })
    }

    fn if_stmt(&mut self) -> PResult<StmtKind> {
        self.enter()?;
        let r = (|| {
            self.expect_kw("if")?;
            let cond = self.expr()?;
            let then = self.block()?;
            let els = if self.eat_kw("else") {
                if self.at_kw("if") {
                    let span = self.span();
                    let kind = self.if_stmt()?;
                    Some(vec![Stmt { kind, span }])
                } else {
                    Some(self.block()?)
                }
            } else {
                None
            };
            Ok(StmtKind::If { cond, then, els })
        })();
        self.leave();
        r
    }

    // -- expressions --------------------------------------------------------

    pub fn expr(&mut self) -> PResult<Expr> {
        self.enter()?;
        let r = self.binary(1);
        self.leave();
        r
    }

    fn binop(&self) -> Option<BinOp> {
        Some(match self.peek() {
            Tok::OrOr => BinOp::Or,
            Tok::AndAnd => BinOp::And,
            Tok::EqEq => BinOp::Eq,
            Tok::NotEq => BinOp::Ne,
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            Tok::Plus => BinOp::Add,
            Tok::Minus => BinOp::Sub,
            Tok::Star => BinOp::Mul,
            Tok::Slash => BinOp::Div,
            Tok::Percent => BinOp::Rem,
            _ => return None,
        })
    }

    /// Precedence climbing; all binary operators are left-associative.
    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binop() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.bump();
            let rhs = self.binary(prec + 1)?;
            let span = lhs.span.clone();
            lhs = Expr {
                kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)),
                span,
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        self.enter()?;
        let r = (|| {
            let span = self.span();
            let op = match self.peek() {
                Tok::Minus => UnOp::Neg,
                Tok::Bang => UnOp::Not,
                _ => return self.postfix(),
            };
            self.bump();
            let inner = self.unary()?;
            Ok(Expr {
                kind: ExprKind::Unary(op, Box::new(inner)),
                span,
            })
        })();
        self.leave();
        r
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        while self.at(&Tok::Dot) {
            self.bump();
            let (name, _) = self.ident()?;
            let span = e.span.clone();
            if self.at(&Tok::LParen) {
                let args = self.args()?;
                e = Expr {
                    kind: ExprKind::Call {
                        receiver: Box::new(e),
                        method: name,
                        args,
                    },
                    span,
                };
            } else {
                e = Expr {
                    kind: ExprKind::Field(Box::new(e), name),
                    span,
                };
            }
        }
        Ok(e)
    }

    fn args(&mut self) -> PResult<Vec<Expr>> {
        self.expect(Tok::LParen)?;
        let mut args = Vec::new();
        if !self.at(&Tok::RParen) {
            loop {
                args.push(self.expr()?);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;
        Ok(args)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let span = self.span();
        let kind = match self.peek().clone() {
            Tok::Int(i) => {
                self.bump();
                ExprKind::Int(i)
            }
            Tok::Real(r) => {
                self.bump();
                ExprKind::Real(r)
            }
            Tok::Str(s) => {
                self.bump();
                ExprKind::Str(s)
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                return Ok(e);
            }
            Tok::LBracket => {
                self.bump();
                let mut items = Vec::new();
                if !self.at(&Tok::RBracket) {
                    loop {
                        items.push(self.expr()?);
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                }
                self.expect(Tok::RBracket)?;
                ExprKind::List(items)
            }
            Tok::Ident(s) => match s.as_str() {
                "true" => {
                    self.bump();
                    ExprKind::Bool(true)
                }
                "false" => {
                    self.bump();
                    ExprKind::Bool(false)
                }
                "null" => {
                    self.bump();
                    ExprKind::Null
                }
                "this" => {
                    self.bump();
                    ExprKind::This
                }
                "new" => {
                    self.bump();
                    let (class, _) = self.ident()?;
                    let args = self.args()?;
                    ExprKind::New { class, args }
                }
                "count" if matches!(self.peek_at(1), Tok::LBrace) => {
                    self.bump();
                    self.enter()?;
                    let pat = self.pattern_block();
                    self.leave();
                    ExprKind::Count(pat?)
                }
                _ => {
                    let (name, _) = self.ident()?;
                    ExprKind::Name(name)
                }
            },
            _ => {
                self.error_expected("expression");
                return Err(());
            }
        };
        Ok(Expr { kind, span })
    }
}

const TOP_STARTERS: &[&str] = &[
    "import", "entry", "package", "rule", "script", "activity", "grammar",
];
const MEMBER_STARTERS: &[&str] = &[
    "association",
    "interface",
    "class",
    "abstract",
    "rule",
    "script",
    "activity",
];
