//! Abstract syntax shared by every stage: procedure labels, types, values,
//! the target expression language, the combined (block-body) language, the
//! annotated variant used by projection, stores, and traces.
//!
//! One `Value` type serves all languages. Wrapped locations (`LocC`, `LocP`,
//! `LocCP`) only appear while running combined code; plain `Loc` only appears
//! in target code. Loc-free values are shared verbatim, which is what lets
//! input stores and traces carry the same values everywhere.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

pub type Name = String;

/// A non-empty subset of the two procedures, compute and prove.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    C,
    P,
    CP,
}

impl Label {
    pub fn has_c(self) -> bool {
        matches!(self, Label::C | Label::CP)
    }

    pub fn has_p(self) -> bool {
        matches!(self, Label::P | Label::CP)
    }

    /// Set inclusion on the underlying subsets of {compute, prove}.
    pub fn subset_of(self, other: Label) -> bool {
        (!self.has_c() || other.has_c()) && (!self.has_p() || other.has_p())
    }

    /// Intersection; `None` when the result would be empty.
    pub fn meet(self, other: Label) -> Option<Label> {
        Label::from_parts(self.has_c() && other.has_c(), self.has_p() && other.has_p())
    }

    pub fn join(self, other: Label) -> Label {
        Label::from_parts(self.has_c() || other.has_c(), self.has_p() || other.has_p()).unwrap()
    }

    pub fn from_parts(c: bool, p: bool) -> Option<Label> {
        match (c, p) {
            (true, true) => Some(Label::CP),
            (true, false) => Some(Label::C),
            (false, true) => Some(Label::P),
            (false, false) => None,
        }
    }

    /// The single-procedure labels, used when projecting.
    pub const SIDES: [Label; 2] = [Label::C, Label::P];
    pub const ALL: [Label; 3] = [Label::C, Label::P, Label::CP];
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::C => write!(f, "C"),
            Label::P => write!(f, "P"),
            Label::CP => write!(f, "CP"),
        }
    }
}

pub const OBJECT: &str = "Object";
pub const PROOF: &str = "Proof";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Type {
    Unit,
    Bool,
    Int,
    Class(Name),
    ProofOf(Name),
    Ref(Box<Type>),
}

impl Type {
    pub fn class(name: impl Into<Name>) -> Type {
        Type::Class(name.into())
    }

    pub fn reference(inner: Type) -> Type {
        Type::Ref(Box::new(inner))
    }

    pub fn is_ref(&self) -> bool {
        matches!(self, Type::Ref(_))
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Unit => write!(f, "Unit"),
            Type::Bool => write!(f, "Bool"),
            Type::Int => write!(f, "Int"),
            Type::Class(c) => write!(f, "{c}"),
            Type::ProofOf(a) => write!(f, "ProofOf {a}"),
            Type::Ref(t) => write!(f, "Ref {t}"),
        }
    }
}

/// A type carrying the procedures it lives in, written `τ@ℓ` in source files.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledType {
    pub ty: Type,
    pub label: Label,
}

impl LabeledType {
    pub fn new(ty: Type, label: Label) -> LabeledType {
        LabeledType { ty, label }
    }
}

impl fmt::Display for LabeledType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.ty, self.label)
    }
}

/// Integer and boolean primitives, parsed from operator syntax and usable in
/// any procedure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PrimOp {
    Add,
    Sub,
    Mul,
    Eq,
    Lt,
}

impl PrimOp {
    pub fn arg_type(self) -> Type {
        Type::Int
    }

    pub fn result_type(self) -> Type {
        match self {
            PrimOp::Add | PrimOp::Sub | PrimOp::Mul => Type::Int,
            PrimOp::Eq | PrimOp::Lt => Type::Bool,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            PrimOp::Add => "+",
            PrimOp::Sub => "-",
            PrimOp::Mul => "*",
            PrimOp::Eq => "==",
            PrimOp::Lt => "<",
        }
    }
}

pub type Loc = i64;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Value {
    Var(Name),
    Unit,
    Bool(bool),
    Int(i64),
    New(Name, Vec<Value>),
    Proof { pred: Name, publics: Vec<Value> },
    Loc(Loc),
    LocC(Loc),
    LocP(Loc),
    LocCP(Loc, Loc),
}

impl Value {
    /// True when no location of any kind occurs inside.
    pub fn loc_free(&self) -> bool {
        match self {
            Value::Var(_) | Value::Unit | Value::Bool(_) | Value::Int(_) => true,
            Value::New(_, vs) => vs.iter().all(Value::loc_free),
            Value::Proof { publics, .. } => publics.iter().all(Value::loc_free),
            Value::Loc(_) | Value::LocC(_) | Value::LocP(_) | Value::LocCP(..) => false,
        }
    }

    pub fn closed(&self) -> bool {
        match self {
            Value::Var(_) => false,
            Value::Unit | Value::Bool(_) | Value::Int(_) => true,
            Value::New(_, vs) => vs.iter().all(Value::closed),
            Value::Proof { publics, .. } => publics.iter().all(Value::closed),
            Value::Loc(_) | Value::LocC(_) | Value::LocP(_) | Value::LocCP(..) => true,
        }
    }

    pub fn subst(&self, map: &BTreeMap<Name, Value>) -> Value {
        match self {
            Value::Var(x) => map.get(x).cloned().unwrap_or_else(|| self.clone()),
            Value::New(c, vs) => Value::New(c.clone(), vs.iter().map(|v| v.subst(map)).collect()),
            Value::Proof { pred, publics } => Value::Proof {
                pred: pred.clone(),
                publics: publics.iter().map(|v| v.subst(map)).collect(),
            },
            _ => self.clone(),
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(n) => Some(*n),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Var(x) => write!(f, "{x}"),
            Value::Unit => write!(f, "()"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(n) => write!(f, "{n}"),
            Value::New(c, vs) => {
                write!(f, "new {c}(")?;
                write_comma_sep(f, vs)?;
                write!(f, ")")
            }
            Value::Proof { pred, publics } => {
                write!(f, "proofof {pred} using (")?;
                write_comma_sep(f, publics)?;
                write!(f, ")")
            }
            Value::Loc(i) => write!(f, "loc#{i}"),
            Value::LocC(i) => write!(f, "rC#{i}"),
            Value::LocP(i) => write!(f, "rP#{i}"),
            Value::LocCP(i, j) => write!(f, "rCP#{i}:{j}"),
        }
    }
}

fn write_comma_sep<T: fmt::Display>(f: &mut fmt::Formatter<'_>, items: &[T]) -> fmt::Result {
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            write!(f, ", ")?;
        }
        write!(f, "{item}")?;
    }
    Ok(())
}

/// A prove form: `prove α = exists (pubs)[secs]. body with (pub args)[sec args]`.
/// The predicate body is always target-language code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProveForm<V> {
    pub pred: Name,
    pub pub_binders: Vec<(Name, Type)>,
    pub sec_binders: Vec<(Name, Type)>,
    pub body: Box<Expr>,
    pub pub_args: Vec<V>,
    pub sec_args: Vec<V>,
}

/// A source combined block before it starts running.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnpBlock {
    pub pred: Name,
    /// Computed public inputs with their (ref-free) types.
    pub pub_inputs: Vec<(Name, Type)>,
    /// Computed secret inputs.
    pub sec_inputs: Vec<(Name, Type)>,
    /// Explicit public bindings `y : τ = v`.
    pub pub_given: Vec<(Name, Type, Value)>,
    pub sec_given: Vec<(Name, Type, Value)>,
    pub body: Box<CombExpr>,
}

/// A combined block in flight: the body has had its explicit bindings
/// substituted, input cells reserved in the compute store under `phi`, and
/// carries its own prove-side store and input log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnpActive {
    pub pred: Name,
    pub pub_inputs: Vec<(Name, Type)>,
    pub sec_inputs: Vec<(Name, Type)>,
    /// Input name to reserved compute-store cell.
    pub phi: BTreeMap<Name, Loc>,
    /// The explicit public/secret argument values recorded at entry.
    pub pub_vals: Vec<Value>,
    pub sec_vals: Vec<Value>,
    pub body: Box<CombExpr>,
    pub sigma_p: Store,
    pub rho: BTreeMap<Name, Value>,
}

/// Target-language expressions, in A-normal form: all subterms are values
/// except let right-hand sides, branches, and predicate bodies.
///
/// `InputAssign`/`InputDeref` are not target forms proper; they belong to the
/// projected concurrent language, which shares this grammar. The sequential
/// target stepper treats them as stuck.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Expr {
    Val(Value),
    Cast { class: Name, value: Value },
    Field { value: Value, field: Name },
    Call { recv: Value, method: Name, args: Vec<Value> },
    Prim { op: PrimOp, args: Vec<Value> },
    Alloc { ty: Type },
    Ref { value: Value },
    Deref { value: Value },
    Assign { target: Value, value: Value },
    If { guard: Value, then_branch: Box<Expr>, else_branch: Box<Expr> },
    Let { var: Name, ty: Type, rhs: Box<Expr>, body: Box<Expr> },
    Prove(ProveForm<Value>),
    Verify { proof: Value, pred: Name, publics: Vec<Value> },
    Cnp(CnpBlock),
    CnpRun(CnpActive),
    InputAssign { var: Name, value: Value },
    InputDeref { var: Name },
}

impl Expr {
    pub fn val(v: Value) -> Expr {
        Expr::Val(v)
    }

    pub fn let_in(var: impl Into<Name>, ty: Type, rhs: Expr, body: Expr) -> Expr {
        Expr::Let { var: var.into(), ty, rhs: Box::new(rhs), body: Box::new(body) }
    }

    pub fn as_value(&self) -> Option<&Value> {
        match self {
            Expr::Val(v) => Some(v),
            _ => None,
        }
    }
}

/// Combined-language expressions: the language of block bodies. Reference
/// allocation, lets, and calls carry procedure labels; computed-input
/// assignment and dereference are first-class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CombExpr {
    Val(Value),
    Cast { class: Name, value: Value },
    Field { value: Value, field: Name },
    Call { recv: Value, method: Name, label: Label, args: Vec<Value> },
    Prim { op: PrimOp, args: Vec<Value> },
    Alloc { ty: Type },
    Ref { label: Label, value: Value },
    Deref { value: Value },
    Assign { target: Value, value: Value },
    If { guard: Value, then_branch: Box<CombExpr>, else_branch: Box<CombExpr> },
    Let { var: Name, ty: Type, label: Label, rhs: Box<CombExpr>, body: Box<CombExpr> },
    Prove(ProveForm<Value>),
    Verify { proof: Value, pred: Name, publics: Vec<Value> },
    InputAssign { var: Name, value: Value },
    InputDeref { var: Name },
    Cnp(CnpBlock),
    CnpRun(CnpActive),
}

impl CombExpr {
    pub fn as_value(&self) -> Option<&Value> {
        match self {
            CombExpr::Val(v) => Some(v),
            _ => None,
        }
    }
}

/// A value annotated with the procedures it is visible to. Annotations drive
/// the label-directed projection without re-deriving types.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnValue {
    pub shape: AnnShape,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnnShape {
    Var(Name),
    Unit,
    Bool(bool),
    Int(i64),
    New(Name, Vec<AnnValue>),
    Proof { pred: Name, publics: Vec<AnnValue> },
    LocC(Loc),
    LocP(Loc),
    LocCP(Loc, Loc),
}

impl AnnValue {
    pub fn new(shape: AnnShape, label: Label) -> AnnValue {
        AnnValue { shape, label }
    }

    /// Re-annotate the top level only, keeping inner annotations.
    pub fn relabel(&self, label: Label) -> AnnValue {
        AnnValue { shape: self.shape.clone(), label }
    }

    /// Forget annotations, recovering the combined value.
    pub fn erase(&self) -> Value {
        match &self.shape {
            AnnShape::Var(x) => Value::Var(x.clone()),
            AnnShape::Unit => Value::Unit,
            AnnShape::Bool(b) => Value::Bool(*b),
            AnnShape::Int(n) => Value::Int(*n),
            AnnShape::New(c, vs) => Value::New(c.clone(), vs.iter().map(AnnValue::erase).collect()),
            AnnShape::Proof { pred, publics } => Value::Proof {
                pred: pred.clone(),
                publics: publics.iter().map(AnnValue::erase).collect(),
            },
            AnnShape::LocC(i) => Value::LocC(*i),
            AnnShape::LocP(i) => Value::LocP(*i),
            AnnShape::LocCP(i, j) => Value::LocCP(*i, *j),
        }
    }

    /// Annotate a combined value uniformly at one label.
    pub fn lift(v: &Value, label: Label) -> AnnValue {
        let shape = match v {
            Value::Var(x) => AnnShape::Var(x.clone()),
            Value::Unit => AnnShape::Unit,
            Value::Bool(b) => AnnShape::Bool(*b),
            Value::Int(n) => AnnShape::Int(*n),
            Value::New(c, vs) => {
                AnnShape::New(c.clone(), vs.iter().map(|v| AnnValue::lift(v, label)).collect())
            }
            Value::Proof { pred, publics } => AnnShape::Proof {
                pred: pred.clone(),
                publics: publics.iter().map(|v| AnnValue::lift(v, label)).collect(),
            },
            Value::Loc(i) => {
                // Raw locations only annotate to a single side.
                match label {
                    Label::C => AnnShape::LocC(*i),
                    Label::P => AnnShape::LocP(*i),
                    Label::CP => panic!("cannot annotate a raw location at CP"),
                }
            }
            Value::LocC(i) => AnnShape::LocC(*i),
            Value::LocP(i) => AnnShape::LocP(*i),
            Value::LocCP(i, j) => AnnShape::LocCP(*i, *j),
        };
        AnnValue { shape, label }
    }
}

/// Annotated combined expressions. Only values carry annotations; structural
/// nodes are label-directed through their value positions and binder labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnnExpr {
    Val(AnnValue),
    Cast { class: Name, value: AnnValue },
    Field { value: AnnValue, field: Name },
    Call { recv: AnnValue, method: Name, label: Label, args: Vec<AnnValue> },
    Prim { op: PrimOp, args: Vec<AnnValue> },
    Alloc { ty: Type },
    Ref { label: Label, value: AnnValue },
    Deref { value: AnnValue },
    Assign { target: AnnValue, value: AnnValue },
    If { guard: AnnValue, then_branch: Box<AnnExpr>, else_branch: Box<AnnExpr> },
    Let { var: Name, ty: Type, label: Label, rhs: Box<AnnExpr>, body: Box<AnnExpr> },
    Prove(ProveForm<AnnValue>),
    Verify { proof: AnnValue, pred: Name, publics: Vec<AnnValue> },
    InputAssign { var: Name, value: AnnValue },
    InputDeref { var: Name },
    /// A nested block: explicit bindings annotated, body left plain, with the
    /// block's compilation attached for projection. Blocks that only surface
    /// at runtime (inside a lifted method body) carry no compilation; they are
    /// never projected, only run.
    Cnp {
        block: CnpBlock,
        pub_ann: Vec<AnnValue>,
        sec_ann: Vec<AnnValue>,
        compiled: Option<Box<Expr>>,
    },
    /// A nested block mid-run. Its pieces are closed, so substitution skips it.
    CnpRun(CnpActive),
}

/// A store entry: reserved-but-uninitialized, or holding a value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Entry {
    Bot,
    Val(Value),
}

/// A mutable heap with its own monotone location counter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Store {
    map: BTreeMap<Loc, Entry>,
    next: Loc,
}

impl Store {
    pub fn new(seed: Loc) -> Store {
        Store { map: BTreeMap::new(), next: seed }
    }

    pub fn fresh(&mut self) -> Loc {
        let loc = self.next;
        self.next += 1;
        loc
    }

    pub fn insert(&mut self, loc: Loc, entry: Entry) {
        self.map.insert(loc, entry);
    }

    pub fn alloc(&mut self, entry: Entry) -> Loc {
        let loc = self.fresh();
        self.map.insert(loc, entry);
        loc
    }

    pub fn get(&self, loc: Loc) -> Option<&Entry> {
        self.map.get(&loc)
    }

    pub fn contains(&self, loc: Loc) -> bool {
        self.map.contains_key(&loc)
    }

    pub fn set(&mut self, loc: Loc, value: Value) {
        self.map.insert(loc, Entry::Val(value));
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Loc, &Entry)> {
        self.map.iter()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// One observable event. Silent steps emit nothing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Event {
    /// `alloc(ι, v)`; `value: None` records reservation of an empty cell.
    Alloc { loc: Loc, value: Option<Value> },
    Set { loc: Loc, value: Value },
    /// `set(x, v)` on a computed input; only inside running blocks.
    SetInput { var: Name, value: Value },
    Gen { pred: Name, publics: Vec<Value>, secrets: Vec<Value> },
    Verif { pred: Name, publics: Vec<Value>, ok: bool },
}

pub type Trace = Vec<Event>;

impl Event {
    /// Rename a computed-input event to its reserved cell; identity otherwise.
    pub fn project_inputs(&self, phi: &BTreeMap<Name, Loc>) -> Event {
        match self {
            Event::SetInput { var, value } => match phi.get(var) {
                Some(loc) => Event::Set { loc: *loc, value: value.clone() },
                None => self.clone(),
            },
            _ => self.clone(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Event::Alloc { loc, value } => serde_json::json!({
                "kind": "alloc",
                "loc": loc,
                "value": value.as_ref().map(|v| v.to_string()),
            }),
            Event::Set { loc, value } => serde_json::json!({
                "kind": "set",
                "loc": loc,
                "value": value.to_string(),
            }),
            Event::SetInput { var, value } => serde_json::json!({
                "kind": "set",
                "name": var,
                "value": value.to_string(),
            }),
            Event::Gen { pred, publics, secrets } => serde_json::json!({
                "kind": "gen",
                "proof": pred,
                "value": {
                    "publics": publics.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
                    "secrets": secrets.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
                },
            }),
            Event::Verif { pred, publics, ok } => serde_json::json!({
                "kind": "verif",
                "proof": pred,
                "value": publics.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
                "bit": ok,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Method {
    pub name: Name,
    pub label: Label,
    pub params: Vec<(Name, Type)>,
    pub ret: Type,
    pub body: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDecl {
    pub name: Name,
    pub parent: Name,
    /// Context-awareness tag; `None` asks the class table to infer it.
    pub aware: Option<Label>,
    pub fields: Vec<(Name, Type)>,
    pub methods: Vec<Method>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub classes: Vec<ClassDecl>,
    pub main: Expr,
}

// ---------------------------------------------------------------------------
// Substitution

fn subst_values(values: &[Value], map: &BTreeMap<Name, Value>) -> Vec<Value> {
    values.iter().map(|v| v.subst(map)).collect()
}

fn without_keys(map: &BTreeMap<Name, Value>, keys: &[&Name]) -> BTreeMap<Name, Value> {
    let mut out = map.clone();
    for k in keys {
        out.remove(*k);
    }
    out
}

impl ProveForm<Value> {
    fn subst(&self, map: &BTreeMap<Name, Value>) -> ProveForm<Value> {
        // Existential binders shadow; the body is closed under them plus the
        // outer map minus shadowed names.
        let binders: Vec<&Name> = self
            .pub_binders
            .iter()
            .chain(self.sec_binders.iter())
            .map(|(x, _)| x)
            .collect();
        let inner = without_keys(map, &binders);
        ProveForm {
            pred: self.pred.clone(),
            pub_binders: self.pub_binders.clone(),
            sec_binders: self.sec_binders.clone(),
            body: Box::new(self.body.subst(&inner)),
            pub_args: subst_values(&self.pub_args, map),
            sec_args: subst_values(&self.sec_args, map),
        }
    }
}

impl CnpBlock {
    fn subst(&self, map: &BTreeMap<Name, Value>) -> CnpBlock {
        let binders: Vec<&Name> = self
            .pub_given
            .iter()
            .chain(self.sec_given.iter())
            .map(|(y, _, _)| y)
            .collect();
        let inner = without_keys(map, &binders);
        CnpBlock {
            pred: self.pred.clone(),
            pub_inputs: self.pub_inputs.clone(),
            sec_inputs: self.sec_inputs.clone(),
            pub_given: self
                .pub_given
                .iter()
                .map(|(y, t, v)| (y.clone(), t.clone(), v.subst(map)))
                .collect(),
            sec_given: self
                .sec_given
                .iter()
                .map(|(y, t, v)| (y.clone(), t.clone(), v.subst(map)))
                .collect(),
            body: Box::new(self.body.subst(&inner)),
        }
    }
}

impl Expr {
    pub fn subst(&self, map: &BTreeMap<Name, Value>) -> Expr {
        if map.is_empty() {
            return self.clone();
        }
        match self {
            Expr::Val(v) => Expr::Val(v.subst(map)),
            Expr::Cast { class, value } => {
                Expr::Cast { class: class.clone(), value: value.subst(map) }
            }
            Expr::Field { value, field } => {
                Expr::Field { value: value.subst(map), field: field.clone() }
            }
            Expr::Call { recv, method, args } => Expr::Call {
                recv: recv.subst(map),
                method: method.clone(),
                args: subst_values(args, map),
            },
            Expr::Prim { op, args } => Expr::Prim { op: *op, args: subst_values(args, map) },
            Expr::Alloc { ty } => Expr::Alloc { ty: ty.clone() },
            Expr::Ref { value } => Expr::Ref { value: value.subst(map) },
            Expr::Deref { value } => Expr::Deref { value: value.subst(map) },
            Expr::Assign { target, value } => {
                Expr::Assign { target: target.subst(map), value: value.subst(map) }
            }
            Expr::If { guard, then_branch, else_branch } => Expr::If {
                guard: guard.subst(map),
                then_branch: Box::new(then_branch.subst(map)),
                else_branch: Box::new(else_branch.subst(map)),
            },
            Expr::Let { var, ty, rhs, body } => {
                let inner = without_keys(map, &[var]);
                Expr::Let {
                    var: var.clone(),
                    ty: ty.clone(),
                    rhs: Box::new(rhs.subst(map)),
                    body: Box::new(body.subst(&inner)),
                }
            }
            Expr::Prove(p) => Expr::Prove(p.subst(map)),
            Expr::Verify { proof, pred, publics } => Expr::Verify {
                proof: proof.subst(map),
                pred: pred.clone(),
                publics: subst_values(publics, map),
            },
            Expr::Cnp(block) => Expr::Cnp(block.subst(map)),
            Expr::CnpRun(active) => {
                // Active blocks are closed; nothing to substitute.
                Expr::CnpRun(active.clone())
            }
            Expr::InputAssign { var, value } => {
                Expr::InputAssign { var: var.clone(), value: value.subst(map) }
            }
            Expr::InputDeref { var } => Expr::InputDeref { var: var.clone() },
        }
    }

    pub fn subst1(&self, var: &str, value: &Value) -> Expr {
        let mut map = BTreeMap::new();
        map.insert(var.to_string(), value.clone());
        self.subst(&map)
    }
}

impl CombExpr {
    pub fn subst(&self, map: &BTreeMap<Name, Value>) -> CombExpr {
        if map.is_empty() {
            return self.clone();
        }
        match self {
            CombExpr::Val(v) => CombExpr::Val(v.subst(map)),
            CombExpr::Cast { class, value } => {
                CombExpr::Cast { class: class.clone(), value: value.subst(map) }
            }
            CombExpr::Field { value, field } => {
                CombExpr::Field { value: value.subst(map), field: field.clone() }
            }
            CombExpr::Call { recv, method, label, args } => CombExpr::Call {
                recv: recv.subst(map),
                method: method.clone(),
                label: *label,
                args: subst_values(args, map),
            },
            CombExpr::Prim { op, args } => {
                CombExpr::Prim { op: *op, args: subst_values(args, map) }
            }
            CombExpr::Alloc { ty } => CombExpr::Alloc { ty: ty.clone() },
            CombExpr::Ref { label, value } => {
                CombExpr::Ref { label: *label, value: value.subst(map) }
            }
            CombExpr::Deref { value } => CombExpr::Deref { value: value.subst(map) },
            CombExpr::Assign { target, value } => {
                CombExpr::Assign { target: target.subst(map), value: value.subst(map) }
            }
            CombExpr::If { guard, then_branch, else_branch } => CombExpr::If {
                guard: guard.subst(map),
                then_branch: Box::new(then_branch.subst(map)),
                else_branch: Box::new(else_branch.subst(map)),
            },
            CombExpr::Let { var, ty, label, rhs, body } => {
                let inner = without_keys(map, &[var]);
                CombExpr::Let {
                    var: var.clone(),
                    ty: ty.clone(),
                    label: *label,
                    rhs: Box::new(rhs.subst(map)),
                    body: Box::new(body.subst(&inner)),
                }
            }
            CombExpr::Prove(p) => CombExpr::Prove(p.subst(map)),
            CombExpr::Verify { proof, pred, publics } => CombExpr::Verify {
                proof: proof.subst(map),
                pred: pred.clone(),
                publics: subst_values(publics, map),
            },
            CombExpr::InputAssign { var, value } => {
                CombExpr::InputAssign { var: var.clone(), value: value.subst(map) }
            }
            CombExpr::InputDeref { var } => CombExpr::InputDeref { var: var.clone() },
            CombExpr::Cnp(block) => CombExpr::Cnp(block.subst(map)),
            CombExpr::CnpRun(active) => CombExpr::CnpRun(active.clone()),
        }
    }

    pub fn subst1(&self, var: &str, value: &Value) -> CombExpr {
        let mut map = BTreeMap::new();
        map.insert(var.to_string(), value.clone());
        self.subst(&map)
    }
}

impl AnnValue {
    /// Substitute, keeping each occurrence's own annotation: a variable
    /// occurrence at label ℓ becomes the replacement's shape annotated ℓ.
    pub fn subst(&self, map: &BTreeMap<Name, AnnValue>) -> AnnValue {
        match &self.shape {
            AnnShape::Var(x) => match map.get(x) {
                Some(v) => v.relabel(self.label),
                None => self.clone(),
            },
            AnnShape::New(c, vs) => AnnValue {
                shape: AnnShape::New(c.clone(), vs.iter().map(|v| v.subst(map)).collect()),
                label: self.label,
            },
            AnnShape::Proof { pred, publics } => AnnValue {
                shape: AnnShape::Proof {
                    pred: pred.clone(),
                    publics: publics.iter().map(|v| v.subst(map)).collect(),
                },
                label: self.label,
            },
            _ => self.clone(),
        }
    }
}

impl AnnExpr {
    pub fn subst(&self, map: &BTreeMap<Name, AnnValue>) -> AnnExpr {
        if map.is_empty() {
            return self.clone();
        }
        let vs = |values: &[AnnValue]| values.iter().map(|v| v.subst(map)).collect::<Vec<_>>();
        match self {
            AnnExpr::Val(v) => AnnExpr::Val(v.subst(map)),
            AnnExpr::Cast { class, value } => {
                AnnExpr::Cast { class: class.clone(), value: value.subst(map) }
            }
            AnnExpr::Field { value, field } => {
                AnnExpr::Field { value: value.subst(map), field: field.clone() }
            }
            AnnExpr::Call { recv, method, label, args } => AnnExpr::Call {
                recv: recv.subst(map),
                method: method.clone(),
                label: *label,
                args: vs(args),
            },
            AnnExpr::Prim { op, args } => AnnExpr::Prim { op: *op, args: vs(args) },
            AnnExpr::Alloc { ty } => AnnExpr::Alloc { ty: ty.clone() },
            AnnExpr::Ref { label, value } => {
                AnnExpr::Ref { label: *label, value: value.subst(map) }
            }
            AnnExpr::Deref { value } => AnnExpr::Deref { value: value.subst(map) },
            AnnExpr::Assign { target, value } => {
                AnnExpr::Assign { target: target.subst(map), value: value.subst(map) }
            }
            AnnExpr::If { guard, then_branch, else_branch } => AnnExpr::If {
                guard: guard.subst(map),
                then_branch: Box::new(then_branch.subst(map)),
                else_branch: Box::new(else_branch.subst(map)),
            },
            AnnExpr::Let { var, ty, label, rhs, body } => {
                let mut inner = map.clone();
                inner.remove(var);
                AnnExpr::Let {
                    var: var.clone(),
                    ty: ty.clone(),
                    label: *label,
                    rhs: Box::new(rhs.subst(map)),
                    body: Box::new(body.subst(&inner)),
                }
            }
            AnnExpr::Prove(p) => {
                // Predicate bodies are plain target code and closed under
                // their binders; only the argument values see substitution.
                AnnExpr::Prove(ProveForm {
                    pred: p.pred.clone(),
                    pub_binders: p.pub_binders.clone(),
                    sec_binders: p.sec_binders.clone(),
                    body: p.body.clone(),
                    pub_args: vs(&p.pub_args),
                    sec_args: vs(&p.sec_args),
                })
            }
            AnnExpr::Verify { proof, pred, publics } => AnnExpr::Verify {
                proof: proof.subst(map),
                pred: pred.clone(),
                publics: vs(publics),
            },
            AnnExpr::InputAssign { var, value } => {
                AnnExpr::InputAssign { var: var.clone(), value: value.subst(map) }
            }
            AnnExpr::InputDeref { var } => AnnExpr::InputDeref { var: var.clone() },
            AnnExpr::Cnp { block, pub_ann, sec_ann, compiled } => {
                // The unannotated body still mentions the erased variables.
                let erased: BTreeMap<Name, Value> =
                    map.iter().map(|(k, v)| (k.clone(), v.erase())).collect();
                AnnExpr::Cnp {
                    block: block.subst(&erased),
                    pub_ann: vs(pub_ann),
                    sec_ann: vs(sec_ann),
                    compiled: compiled.as_ref().map(|c| Box::new(c.subst(&erased))),
                }
            }
            AnnExpr::CnpRun(active) => AnnExpr::CnpRun(active.clone()),
        }
    }

    pub fn subst1(&self, var: &str, value: &AnnValue) -> AnnExpr {
        let mut map = BTreeMap::new();
        map.insert(var.to_string(), value.clone());
        self.subst(&map)
    }
}

// ---------------------------------------------------------------------------
// Canonical renaming of locations

/// Rewrites locations to a canonical numbering by order of first appearance,
/// so runs that differ only in allocator seeds compare equal. Both sides of a
/// paired location are renamed in their own namespace.
#[derive(Debug, Default)]
pub struct Canonicalizer {
    c_map: BTreeMap<Loc, Loc>,
    p_map: BTreeMap<Loc, Loc>,
}

impl Canonicalizer {
    pub fn new() -> Canonicalizer {
        Canonicalizer::default()
    }

    pub fn rename_c(&mut self, loc: Loc) -> Loc {
        let next = self.c_map.len() as Loc;
        *self.c_map.entry(loc).or_insert(next)
    }

    pub fn rename_p(&mut self, loc: Loc) -> Loc {
        let next = self.p_map.len() as Loc;
        *self.p_map.entry(loc).or_insert(next)
    }

    /// Canonicalize a value whose raw locations live in the compute store.
    pub fn value(&mut self, v: &Value) -> Value {
        match v {
            Value::New(c, vs) => Value::New(c.clone(), vs.iter().map(|v| self.value(v)).collect()),
            Value::Proof { pred, publics } => Value::Proof {
                pred: pred.clone(),
                publics: publics.iter().map(|v| self.value(v)).collect(),
            },
            Value::Loc(i) | Value::LocC(i) => {
                let renamed = self.rename_c(*i);
                match v {
                    Value::Loc(_) => Value::Loc(renamed),
                    _ => Value::LocC(renamed),
                }
            }
            Value::LocP(i) => Value::LocP(self.rename_p(*i)),
            Value::LocCP(i, j) => Value::LocCP(self.rename_c(*i), self.rename_p(*j)),
            _ => v.clone(),
        }
    }

    pub fn event(&mut self, e: &Event) -> Event {
        match e {
            Event::Alloc { loc, value } => Event::Alloc {
                loc: self.rename_c(*loc),
                value: value.as_ref().map(|v| self.value(v)),
            },
            Event::Set { loc, value } => {
                Event::Set { loc: self.rename_c(*loc), value: self.value(value) }
            }
            Event::SetInput { var, value } => {
                Event::SetInput { var: var.clone(), value: self.value(value) }
            }
            Event::Gen { pred, publics, secrets } => Event::Gen {
                pred: pred.clone(),
                publics: publics.iter().map(|v| self.value(v)).collect(),
                secrets: secrets.iter().map(|v| self.value(v)).collect(),
            },
            Event::Verif { pred, publics, ok } => Event::Verif {
                pred: pred.clone(),
                publics: publics.iter().map(|v| self.value(v)).collect(),
                ok: *ok,
            },
        }
    }

    pub fn trace(&mut self, t: &Trace) -> Trace {
        t.iter().map(|e| self.event(e)).collect()
    }

    /// Canonicalize a compute-side store: cells are visited in the order their
    /// locations were first seen, then remaining cells in address order.
    pub fn store_c(&mut self, s: &Store) -> Vec<(Loc, Entry)> {
        let mut pending: Vec<Loc> = s.iter().map(|(l, _)| *l).collect();
        pending.sort_by_key(|l| match self.c_map.get(l) {
            Some(rank) => (0, *rank),
            None => (1, *l),
        });
        pending
            .into_iter()
            .map(|l| {
                let renamed = self.rename_c(l);
                let entry = match s.get(l).unwrap() {
                    Entry::Bot => Entry::Bot,
                    Entry::Val(v) => Entry::Val(self.value(v)),
                };
                (renamed, entry)
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Alpha equivalence

fn alpha_value(a: &Value, b: &Value, env: &BTreeMap<Name, Name>) -> bool {
    match (a, b) {
        (Value::Var(x), Value::Var(y)) => match env.get(x) {
            Some(mapped) => mapped == y,
            None => x == y,
        },
        (Value::New(c1, v1), Value::New(c2, v2)) => {
            c1 == c2 && v1.len() == v2.len() && v1.iter().zip(v2).all(|(a, b)| alpha_value(a, b, env))
        }
        (Value::Proof { pred: p1, publics: v1 }, Value::Proof { pred: p2, publics: v2 }) => {
            p1 == p2 && v1.len() == v2.len() && v1.iter().zip(v2).all(|(a, b)| alpha_value(a, b, env))
        }
        _ => a == b,
    }
}

/// Structural equality of target expressions up to renaming of bound
/// variables. Used by projection to decide whether branch projections agree.
pub fn alpha_equal(a: &Expr, b: &Expr) -> bool {
    alpha_expr(a, b, &BTreeMap::new())
}

fn alpha_values(a: &[Value], b: &[Value], env: &BTreeMap<Name, Name>) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| alpha_value(x, y, env))
}

fn alpha_binders(
    a: &[(Name, Type)],
    b: &[(Name, Type)],
    env: &BTreeMap<Name, Name>,
) -> Option<BTreeMap<Name, Name>> {
    if a.len() != b.len() {
        return None;
    }
    let mut out = env.clone();
    for ((xa, ta), (xb, tb)) in a.iter().zip(b) {
        if ta != tb {
            return None;
        }
        out.insert(xa.clone(), xb.clone());
    }
    Some(out)
}

fn alpha_expr(a: &Expr, b: &Expr, env: &BTreeMap<Name, Name>) -> bool {
    match (a, b) {
        (Expr::Val(x), Expr::Val(y)) => alpha_value(x, y, env),
        (Expr::Cast { class: c1, value: v1 }, Expr::Cast { class: c2, value: v2 }) => {
            c1 == c2 && alpha_value(v1, v2, env)
        }
        (Expr::Field { value: v1, field: f1 }, Expr::Field { value: v2, field: f2 }) => {
            f1 == f2 && alpha_value(v1, v2, env)
        }
        (
            Expr::Call { recv: r1, method: m1, args: a1 },
            Expr::Call { recv: r2, method: m2, args: a2 },
        ) => m1 == m2 && alpha_value(r1, r2, env) && alpha_values(a1, a2, env),
        (Expr::Prim { op: o1, args: a1 }, Expr::Prim { op: o2, args: a2 }) => {
            o1 == o2 && alpha_values(a1, a2, env)
        }
        (Expr::Alloc { ty: t1 }, Expr::Alloc { ty: t2 }) => t1 == t2,
        (Expr::Ref { value: v1 }, Expr::Ref { value: v2 }) => alpha_value(v1, v2, env),
        (Expr::Deref { value: v1 }, Expr::Deref { value: v2 }) => alpha_value(v1, v2, env),
        (
            Expr::Assign { target: t1, value: v1 },
            Expr::Assign { target: t2, value: v2 },
        ) => alpha_value(t1, t2, env) && alpha_value(v1, v2, env),
        (
            Expr::If { guard: g1, then_branch: t1, else_branch: e1 },
            Expr::If { guard: g2, then_branch: t2, else_branch: e2 },
        ) => alpha_value(g1, g2, env) && alpha_expr(t1, t2, env) && alpha_expr(e1, e2, env),
        (
            Expr::Let { var: x1, ty: t1, rhs: r1, body: b1 },
            Expr::Let { var: x2, ty: t2, rhs: r2, body: b2 },
        ) => {
            if t1 != t2 || !alpha_expr(r1, r2, env) {
                return false;
            }
            let mut inner = env.clone();
            inner.insert(x1.clone(), x2.clone());
            alpha_expr(b1, b2, &inner)
        }
        (Expr::Prove(p1), Expr::Prove(p2)) => {
            if p1.pred != p2.pred
                || !alpha_values(&p1.pub_args, &p2.pub_args, env)
                || !alpha_values(&p1.sec_args, &p2.sec_args, env)
            {
                return false;
            }
            let env1 = match alpha_binders(&p1.pub_binders, &p2.pub_binders, env) {
                Some(e) => e,
                None => return false,
            };
            let env2 = match alpha_binders(&p1.sec_binders, &p2.sec_binders, &env1) {
                Some(e) => e,
                None => return false,
            };
            alpha_expr(&p1.body, &p2.body, &env2)
        }
        (
            Expr::Verify { proof: v1, pred: p1, publics: u1 },
            Expr::Verify { proof: v2, pred: p2, publics: u2 },
        ) => p1 == p2 && alpha_value(v1, v2, env) && alpha_values(u1, u2, env),
        (
            Expr::InputAssign { var: x1, value: v1 },
            Expr::InputAssign { var: x2, value: v2 },
        ) => x1 == x2 && alpha_value(v1, v2, env),
        (Expr::InputDeref { var: x1 }, Expr::InputDeref { var: x2 }) => x1 == x2,
        // Blocks compare structurally; bound-variable renaming inside block
        // bodies is not needed where this is used.
        (Expr::Cnp(b1), Expr::Cnp(b2)) => b1 == b2,
        (Expr::CnpRun(a1), Expr::CnpRun(a2)) => a1 == a2,
        _ => false,
    }
}

// ---------------------------------------------------------------------------
// Pretty-printing

fn fmt_binders(f: &mut fmt::Formatter<'_>, binders: &[(Name, Type)]) -> fmt::Result {
    for (i, (x, t)) in binders.iter().enumerate() {
        if i > 0 {
            write!(f, ", ")?;
        }
        write!(f, "{x} : {t}")?;
    }
    Ok(())
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Val(v) => write!(f, "{v}"),
            Expr::Cast { class, value } => write!(f, "({class}) {value}"),
            Expr::Field { value, field } => write!(f, "{value}.{field}"),
            Expr::Call { recv, method, args } => {
                write!(f, "{recv}.{method}(")?;
                write_comma_sep(f, args)?;
                write!(f, ")")
            }
            Expr::Prim { op, args } => write!(f, "{} {} {}", args[0], op.symbol(), args[1]),
            Expr::Alloc { ty } => write!(f, "alloc {ty}"),
            Expr::Ref { value } => write!(f, "ref {value}"),
            Expr::Deref { value } => write!(f, "!{value}"),
            Expr::Assign { target, value } => write!(f, "{target} := {value}"),
            Expr::If { guard, then_branch, else_branch } => {
                write!(f, "if {guard} {{ {then_branch} }} else {{ {else_branch} }}")
            }
            Expr::Let { var, ty, rhs, body } => {
                write!(f, "let {var} : {ty} = {rhs} in {body}")
            }
            Expr::Prove(p) => {
                write!(f, "prove {} = exists (", p.pred)?;
                fmt_binders(f, &p.pub_binders)?;
                write!(f, ")[")?;
                fmt_binders(f, &p.sec_binders)?;
                write!(f, "]. {{ {} }} with (", p.body)?;
                write_comma_sep(f, &p.pub_args)?;
                write!(f, ")[")?;
                write_comma_sep(f, &p.sec_args)?;
                write!(f, "]")
            }
            Expr::Verify { proof, pred, publics } => {
                write!(f, "verify {proof} proves {pred} using (")?;
                write_comma_sep(f, publics)?;
                write!(f, ")")
            }
            Expr::Cnp(b) => write!(f, "{b}"),
            Expr::CnpRun(a) => write!(f, "<running {}>", a.pred),
            Expr::InputAssign { var, value } => write!(f, "{var} <~ {value}"),
            Expr::InputDeref { var } => write!(f, "!!{var}"),
        }
    }
}

impl fmt::Display for CnpBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cnp {} (pub ", self.pred)?;
        fmt_binders(f, &self.pub_inputs)?;
        write!(f, "; sec ")?;
        fmt_binders(f, &self.sec_inputs)?;
        write!(f, ") given (")?;
        for (i, (y, t, v)) in self.pub_given.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "pub {y} : {t} = {v}")?;
        }
        for (i, (y, t, v)) in self.sec_given.iter().enumerate() {
            if i > 0 || !self.pub_given.is_empty() {
                write!(f, ", ")?;
            }
            write!(f, "sec {y} : {t} = {v}")?;
        }
        write!(f, ") {{ {} }}", self.body)
    }
}

impl fmt::Display for CombExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CombExpr::Val(v) => write!(f, "{v}"),
            CombExpr::Cast { class, value } => write!(f, "({class}) {value}"),
            CombExpr::Field { value, field } => write!(f, "{value}.{field}"),
            CombExpr::Call { recv, method, label, args } => {
                write!(f, "{recv}.{method}@{label}(")?;
                write_comma_sep(f, args)?;
                write!(f, ")")
            }
            CombExpr::Prim { op, args } => write!(f, "{} {} {}", args[0], op.symbol(), args[1]),
            CombExpr::Alloc { ty } => write!(f, "alloc {ty}"),
            CombExpr::Ref { label, value } => write!(f, "ref@{label} {value}"),
            CombExpr::Deref { value } => write!(f, "!{value}"),
            CombExpr::Assign { target, value } => write!(f, "{target} := {value}"),
            CombExpr::If { guard, then_branch, else_branch } => {
                write!(f, "if {guard} {{ {then_branch} }} else {{ {else_branch} }}")
            }
            CombExpr::Let { var, ty, label, rhs, body } => {
                write!(f, "let {var} : {ty}@{label} = {rhs} in {body}")
            }
            CombExpr::Prove(p) => {
                write!(f, "prove {} = exists (", p.pred)?;
                fmt_binders(f, &p.pub_binders)?;
                write!(f, ")[")?;
                fmt_binders(f, &p.sec_binders)?;
                write!(f, "]. {{ {} }} with (", p.body)?;
                write_comma_sep(f, &p.pub_args)?;
                write!(f, ")[")?;
                write_comma_sep(f, &p.sec_args)?;
                write!(f, "]")
            }
            CombExpr::Verify { proof, pred, publics } => {
                write!(f, "verify {proof} proves {pred} using (")?;
                write_comma_sep(f, publics)?;
                write!(f, ")")
            }
            CombExpr::InputAssign { var, value } => write!(f, "{var} <~ {value}"),
            CombExpr::InputDeref { var } => write!(f, "!!{var}"),
            CombExpr::Cnp(b) => write!(f, "{b}"),
            CombExpr::CnpRun(a) => write!(f, "<running {}>", a.pred),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_lattice() {
        assert!(Label::C.subset_of(Label::CP));
        assert!(Label::P.subset_of(Label::CP));
        assert!(!Label::CP.subset_of(Label::C));
        assert!(!Label::C.subset_of(Label::P));
        assert_eq!(Label::C.meet(Label::P), None);
        assert_eq!(Label::C.meet(Label::CP), Some(Label::C));
        assert_eq!(Label::CP.meet(Label::CP), Some(Label::CP));
        assert_eq!(Label::C.join(Label::P), Label::CP);
    }

    #[test]
    fn subst_shadows_let() {
        let e = Expr::let_in(
            "x",
            Type::Int,
            Expr::Val(Value::Var("x".into())),
            Expr::Val(Value::Var("x".into())),
        );
        let out = e.subst1("x", &Value::Int(7));
        match out {
            Expr::Let { rhs, body, .. } => {
                assert_eq!(*rhs, Expr::Val(Value::Int(7)));
                assert_eq!(*body, Expr::Val(Value::Var("x".into())));
            }
            _ => panic!(),
        }
    }

    #[test]
    fn alpha_equal_renames_bound() {
        let a = Expr::let_in("x", Type::Int, Expr::Val(Value::Int(1)), Expr::Val(Value::Var("x".into())));
        let b = Expr::let_in("y", Type::Int, Expr::Val(Value::Int(1)), Expr::Val(Value::Var("y".into())));
        assert!(alpha_equal(&a, &b));
        let c = Expr::let_in("y", Type::Int, Expr::Val(Value::Int(2)), Expr::Val(Value::Var("y".into())));
        assert!(!alpha_equal(&a, &c));
    }

    #[test]
    fn canonicalizer_by_first_appearance() {
        let mut canon = Canonicalizer::new();
        let t = vec![
            Event::Alloc { loc: 40, value: None },
            Event::Set { loc: 17, value: Value::Int(1) },
            Event::Set { loc: 40, value: Value::Int(2) },
        ];
        let out = canon.trace(&t);
        assert_eq!(
            out,
            vec![
                Event::Alloc { loc: 0, value: None },
                Event::Set { loc: 1, value: Value::Int(1) },
                Event::Set { loc: 0, value: Value::Int(2) },
            ]
        );
    }

    #[test]
    fn ann_subst_keeps_occurrence_label() {
        let occ = AnnValue::new(AnnShape::Var("x".into()), Label::C);
        let mut map = BTreeMap::new();
        map.insert("x".to_string(), AnnValue::lift(&Value::Int(3), Label::CP));
        let out = occ.subst(&map);
        assert_eq!(out.label, Label::C);
        assert_eq!(out.shape, AnnShape::Int(3));
    }
}
