//! Syntax tree of a design grammar.
//!
//! Every node carries a [`SourceSpan`]; spans compare equal unconditionally, so
//! the derived `PartialEq` is structural equality.

use crate::diag::SourceSpan;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Visibility {
    #[default]
    Public,
    Private,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrammarModel {
    pub name: String,
    pub version: Option<String>,
    pub imports: Vec<Import>,
    pub entry: Option<EntryDecl>,
    pub packages: Vec<PackageDef>,
    /// Rules declared outside any package; private to the module.
    pub rules: Vec<Rule>,
    /// Activities declared outside any package; private to the module.
    pub activities: Vec<Activity>,
    pub span: SourceSpan,
}

impl GrammarModel {
    pub fn classes(&self) -> impl Iterator<Item = (&PackageDef, &ClassDef)> {
        self.packages
            .iter()
            .flat_map(|p| p.classes.iter().map(move |c| (p, c)))
    }

    pub fn interfaces(&self) -> impl Iterator<Item = (&PackageDef, &InterfaceDef)> {
        self.packages
            .iter()
            .flat_map(|p| p.interfaces.iter().map(move |i| (p, i)))
    }

    /// All rules with the visibility of their enclosing package.
    pub fn all_rules(&self) -> impl Iterator<Item = (Visibility, &Rule)> {
        self.rules.iter().map(|r| (Visibility::Private, r)).chain(
            self.packages
                .iter()
                .flat_map(|p| p.rules.iter().map(move |r| (p.visibility, r))),
        )
    }

    pub fn all_activities(&self) -> impl Iterator<Item = (Visibility, &Activity)> {
        self.activities
            .iter()
            .map(|a| (Visibility::Private, a))
            .chain(
                self.packages
                    .iter()
                    .flat_map(|p| p.activities.iter().map(move |a| (p.visibility, a))),
            )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Import {
    pub module: String,
    pub span: SourceSpan,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntryDecl {
    pub activity: String,
    pub span: SourceSpan,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PackageDef {
    pub name: String,
    pub visibility: Visibility,
    pub associations: Vec<AssociationDef>,
    pub interfaces: Vec<InterfaceDef>,
    pub classes: Vec<ClassDef>,
    pub rules: Vec<Rule>,
    pub activities: Vec<Activity>,
    pub span: SourceSpan,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssociationDef {
    pub name: String,
    /// Duplicate (src, label, dst) links are permitted only on multi-edge associations.
    pub multi: bool,
    pub span: SourceSpan,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassDef {
    pub name: String,
    pub is_abstract: bool,
    pub parent: Option<String>,
    pub implements: Vec<String>,
    pub fields: Vec<FieldDef>,
    pub constructors: Vec<MethodDef>,
    pub methods: Vec<MethodDef>,
    pub span: SourceSpan,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InterfaceDef {
    pub name: String,
    pub extends: Vec<String>,
    /// Signatures only; every body is [`MethodBody::Abstract`].
    pub methods: Vec<MethodDef>,
    pub span: SourceSpan,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldDef {
    pub name: String,
    pub ty: TypeExpr,
    pub visibility: Visibility,
    pub default: Option<Expr>,
    pub span: SourceSpan,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub ty: TypeExpr,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodDef {
    /// For constructors this is the class name.
    pub name: String,
    pub params: Vec<Param>,
    pub ret: TypeExpr,
    pub visibility: Visibility,
    pub body: MethodBody,
    pub span: SourceSpan,
}

impl MethodDef {
    pub fn has_body(&self) -> bool {
        !matches!(self.body, MethodBody::Abstract)
    }

    pub fn arity(&self) -> usize {
        self.params.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MethodBody {
    Abstract,
    Script(Block),
    Activity(Activity),
}

/// Written type. Named types are resolved against the module scope later.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum TypeExpr {
    Int,
    Real,
    Bool,
    Str,
    Void,
    Named(String),
    List(Box<TypeExpr>),
}

// ---------------------------------------------------------------------------
// Rules
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    pub name: String,
    pub kind: RuleKind,
    pub span: SourceSpan,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RuleKind {
    Pattern(Box<PatternRule>),
    Script(ScriptRule),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ApplyMode {
    #[default]
    FirstMatch,
    Forall,
}

/// LHS/RHS rewrite rule. With an `invoke` clause or `new` nodes on the RHS it is
/// a call rule (method-call or constructor-call form).
#[derive(Clone, Debug, PartialEq)]
pub struct PatternRule {
    pub mode: ApplyMode,
    pub lhs: PatternAst,
    pub invoke: Option<Invocation>,
    pub rhs: RhsAst,
}

impl PatternRule {
    pub fn is_call_rule(&self) -> bool {
        self.invoke.is_some()
            || self
                .rhs
                .nodes
                .iter()
                .any(|n| matches!(n.kind, RhsNodeKind::Construct { .. }))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScriptRule {
    pub body: Block,
}

/// Method call selected on the LHS of a call rule.
#[derive(Clone, Debug, PartialEq)]
pub struct Invocation {
    pub receiver: String,
    pub method: String,
    pub args: Vec<Expr>,
    pub span: SourceSpan,
}

/// Name of the RHS variable bound to a call rule's returned instance.
pub const METHOD_RETURN: &str = "methodReturn";

#[derive(Clone, Debug, PartialEq, Default)]
pub struct PatternAst {
    pub nodes: Vec<PatNode>,
    pub edges: Vec<PatEdge>,
    pub guards: Vec<Expr>,
}

/// `x: Type;` declares a pattern variable; `x;` refers to a name bound in the
/// enclosing scope (pre-bound).
#[derive(Clone, Debug, PartialEq)]
pub struct PatNode {
    pub name: String,
    pub ty: Option<String>,
    pub span: SourceSpan,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatEdge {
    pub src: String,
    pub label: String,
    pub dst: String,
    pub span: SourceSpan,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct RhsAst {
    pub nodes: Vec<RhsNode>,
    pub edges: Vec<PatEdge>,
    pub sets: Vec<AttrAssign>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RhsNode {
    pub name: String,
    pub kind: RhsNodeKind,
    pub span: SourceSpan,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RhsNodeKind {
    /// Preserved LHS variable, or `methodReturn`.
    Keep,
    /// Fresh instance built by the class's zero-argument constructor.
    Create(String),
    /// Fresh instance built by an explicit constructor call.
    Construct { class: String, args: Vec<Expr> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttrAssign {
    pub var: String,
    pub field: String,
    pub value: Expr,
    pub span: SourceSpan,
}

// ---------------------------------------------------------------------------
// Activities
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct Activity {
    pub name: String,
    /// Rules local to this activity (the only rules a method body may use).
    pub rules: Vec<Rule>,
    pub nodes: Vec<ActivityNode>,
    pub span: SourceSpan,
}

impl Activity {
    pub fn node(&self, name: &str) -> Option<&ActivityNode> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn start(&self) -> Option<&ActivityNode> {
        self.nodes
            .iter()
            .find(|n| matches!(n.kind, NodeKind::Start { .. }))
    }

    pub fn local_rule(&self, name: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.name == name)
    }
}

pub const START_NODE: &str = "start";

#[derive(Clone, Debug, PartialEq)]
pub struct ActivityNode {
    pub name: String,
    pub kind: NodeKind,
    pub span: SourceSpan,
}

#[derive(Clone, Debug, PartialEq)]
pub enum NodeKind {
    Start {
        next: String,
    },
    End,
    Apply {
        rule: String,
        required: bool,
        next: String,
    },
    Sub {
        activity: String,
        next: String,
    },
    Decide {
        guard: Expr,
        branches: Vec<Branch>,
    },
    /// Return search of a method body: optional LHS pattern, then the returned expression.
    Return {
        pattern: Option<PatternAst>,
        value: Expr,
    },
}

impl NodeKind {
    pub fn successors(&self) -> Vec<&str> {
        match self {
            NodeKind::Start { next }
            | NodeKind::Apply { next, .. }
            | NodeKind::Sub { next, .. } => {
                vec![next.as_str()]
            }
            NodeKind::Decide { branches, .. } => {
                branches.iter().map(|b| b.target.as_str()).collect()
            }
            NodeKind::End | NodeKind::Return { .. } => Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub label: BranchLabel,
    pub target: String,
    pub span: SourceSpan,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum BranchLabel {
    True,
    False,
    Text(String),
    Else,
}

impl BranchLabel {
    pub fn as_str(&self) -> &str {
        match self {
            BranchLabel::True => "true",
            BranchLabel::False => "false",
            BranchLabel::Text(s) => s,
            BranchLabel::Else => "else",
        }
    }
}

// ---------------------------------------------------------------------------
// Statements and expressions
// ---------------------------------------------------------------------------

pub type Block = Vec<Stmt>;

#[derive(Clone, Debug, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: SourceSpan,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StmtKind {
    Let {
        name: String,
        ty: Option<TypeExpr>,
        value: Expr,
    },
    Assign {
        name: String,
        value: Expr,
    },
    SetField {
        target: Expr,
        field: String,
        value: Expr,
    },
    Link {
        src: Expr,
        label: String,
        dst: Expr,
    },
    Unlink {
        src: Expr,
        label: String,
        dst: Expr,
    },
    Delete(Expr),
    If {
        cond: Expr,
        then: Block,
        els: Option<Block>,
    },
    ForRange {
        var: String,
        from: Expr,
        to: Expr,
        inclusive: bool,
        body: Block,
    },
    ForMatch {
        pattern: PatternAst,
        body: Block,
    },
    Return(Option<Expr>),
    Expr(Expr),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: SourceSpan,
}

impl Expr {
    pub fn new(kind: ExprKind) -> Self {
        Expr {
            kind,
            span: SourceSpan::synthetic(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ExprKind {
    Int(i64),
    Real(f64),
    Bool(bool),
    Str(String),
    Null,
    Name(String),
    This,
    Field(Box<Expr>, String),
    Call {
        receiver: Box<Expr>,
        method: String,
        args: Vec<Expr>,
    },
    New {
        class: String,
        args: Vec<Expr>,
    },
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Count(PatternAst),
    List(Vec<Expr>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Or,
    And,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
    Mul,
    Div,
    Rem,
}

impl BinOp {
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne => 3,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div | BinOp::Rem => 6,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Or => "||",
            BinOp::And => "&&",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
        }
    }
}
