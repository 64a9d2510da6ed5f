//! Splitting combined code into its two procedures.
//!
//! A combined block body is written once but belongs to two programs. This
//! module derives both:
//!
//! * `Projector::project` builds one procedure's plain target code for a
//!   block body, following the same candidate choices the checker makes;
//! * `compile_program` uses it to replace every block in a program with
//!   allocate/run/prove target code, so compiled programs contain no blocks;
//! * `Projector::annotate` stamps every value in a block body with the
//!   procedures it is visible to, and `project_ann` splits annotated code by
//!   reading those stamps, with no typing context. The concurrent machine is
//!   spawned from an annotated body, and the annotated in-order machine keeps
//!   the stamps so its states stay splittable.
//!
//! Candidate choice never looks at which side is being built: the compute and
//! prover projections of one expression must come from the same derivation,
//! or the two procedures would disagree about the shape of shared code.

use crate::classtable::ClassTable;
use crate::syntax::*;
use crate::typing_combined::{
    cands_to_string, ghost_map, inner_block_cx, labeled_subtype, unlift_expr, ASet, Candidates,
    Comb, Cx, LabeledGamma,
};
use crate::typing_core::{Core, Gamma, StoreTy, TypeError};
use std::collections::BTreeMap;

type Result<T> = std::result::Result<T, TypeError>;

/// Binder for a projected right-hand side kept only for its effects. The
/// name is never referenced, so reuse under shadowing is harmless.
const DROP: &str = "$drop";

/// The cell reserved for computed input `x` in compiled code.
fn ref_cell(x: &str) -> Name {
    format!("{x}$ref")
}

/// The read-back of that cell, passed to the trailing prove.
fn read_back(x: &str) -> Name {
    format!("{x}$val")
}

fn unit() -> Expr {
    Expr::Val(Value::Unit)
}

/// The one-side image of a combined value: wrapped locations become that
/// side's raw location, or nothing if they belong to the other side.
pub fn value_at_side(v: &Value, side: Label) -> Option<Value> {
    match v {
        Value::Var(_) | Value::Unit | Value::Bool(_) | Value::Int(_) => Some(v.clone()),
        Value::New(c, args) => {
            let args = args.iter().map(|a| value_at_side(a, side)).collect::<Option<Vec<_>>>()?;
            Some(Value::New(c.clone(), args))
        }
        Value::Proof { pred, publics } => {
            let publics =
                publics.iter().map(|a| value_at_side(a, side)).collect::<Option<Vec<_>>>()?;
            Some(Value::Proof { pred: pred.clone(), publics })
        }
        Value::LocC(i) if side == Label::C => Some(Value::Loc(*i)),
        Value::LocP(i) if side == Label::P => Some(Value::Loc(*i)),
        Value::LocCP(i, j) => Some(Value::Loc(if side == Label::C { *i } else { *j })),
        _ => None,
    }
}

pub struct Projector<'c, 'a> {
    comb: &'c Comb<'c, 'a>,
}

impl<'c, 'a> Projector<'c, 'a> {
    pub fn new(comb: &'c Comb<'c, 'a>) -> Projector<'c, 'a> {
        Projector { comb }
    }

    fn ct(&self) -> &ClassTable {
        self.comb.core.ct
    }

    /// Pick the candidate a requirement selects: an exact procedure match
    /// first, otherwise any candidate that widens to the requirement. Per
    /// procedure a fragment has at most one type, so this is deterministic.
    fn choose(
        &self,
        cands: &Candidates,
        want: &LabeledType,
        at: impl Fn() -> String,
    ) -> Result<(Label, Type)> {
        if let Some((l, t)) =
            cands.iter().find(|(l, t)| *l == want.label && self.ct().subtype(t, &want.ty))
        {
            return Ok((*l, t.clone()));
        }
        for (l, t) in cands {
            if labeled_subtype(self.ct(), t, *l, &want.ty, want.label) {
                return Ok((*l, t.clone()));
            }
        }
        Err(TypeError::LabeledMismatch {
            expected: format!("{}@{}", want.ty, want.label),
            found: cands_to_string(cands),
            at: at(),
        })
    }

    /// The procedure a conditional branches in: the widest one its guard is
    /// a boolean at, so each side keeps as much of the branching as it can
    /// see.
    fn guard_label(&self, cx: &Cx, guard: &Value) -> Result<Label> {
        let cands = self.comb.value_candidates(cx, guard);
        for l in [Label::CP, Label::C, Label::P] {
            if cands.contains(&(l, Type::Bool)) {
                return Ok(l);
            }
        }
        Err(TypeError::ShapeMismatch {
            expected: "Bool",
            found: cands.first().map(|(_, t)| t.clone()).unwrap_or(Type::Unit),
            at: format!("guard {guard}"),
        })
    }

    /// The conditional's narrowed requirement: choose once against the
    /// branch candidate intersection, so both branches project the same
    /// candidate on both sides.
    fn narrow_if(
        &self,
        cx: &Cx,
        assigned: &ASet,
        then_branch: &CombExpr,
        else_branch: &CombExpr,
        want: &LabeledType,
        guard: &Value,
    ) -> Result<LabeledType> {
        let (c1, _) = self.comb.synth(cx, assigned, then_branch)?;
        let (c2, _) = self.comb.synth(cx, assigned, else_branch)?;
        let inter: Candidates = c1.iter().filter(|c| c2.contains(c)).cloned().collect();
        let (l, t) = self.choose(&inter, want, || format!("if {guard}"))?;
        Ok(LabeledType { ty: t, label: l })
    }

    /// One procedure's body for a combined expression. `want` is the
    /// requirement the context puts on the expression; the choice it forces
    /// is side-independent. Returns the projected code, its type on this
    /// side, and the computed inputs assigned.
    pub fn project(
        &self,
        cx: &Cx,
        assigned: &ASet,
        e: &CombExpr,
        want: &LabeledType,
        side: Label,
    ) -> Result<(Expr, Type, ASet)> {
        match e {
            CombExpr::If { guard, then_branch, else_branch } => {
                let lg = self.guard_label(cx, guard)?;
                let narrowed =
                    self.narrow_if(cx, assigned, then_branch, else_branch, want, guard)?;
                let (p1, t1, a1) = self.project(cx, assigned, then_branch, &narrowed, side)?;
                let (p2, _, _) = self.project(cx, assigned, else_branch, &narrowed, side)?;
                if side.subset_of(lg) {
                    let g = value_at_side(guard, side)
                        .expect("a guard visible to a procedure projects there");
                    let out = Expr::If {
                        guard: g,
                        then_branch: Box::new(p1),
                        else_branch: Box::new(p2),
                    };
                    Ok((out, t1, a1))
                } else if alpha_equal(&p1, &p2) {
                    Ok((p1, t1, a1))
                } else {
                    Err(TypeError::UnprojectableIf { side, at: format!("if {guard}") })
                }
            }
            CombExpr::Let { var, ty, label, rhs, body } => {
                let want_rhs = LabeledType { ty: ty.clone(), label: *label };
                let (prhs, trhs, a1) = self.project(cx, assigned, rhs, &want_rhs, side)?;
                let mut inner = cx.clone();
                inner.gamma.insert(var.clone(), want_rhs);
                let (pbody, tbody, a2) = self.project(&inner, &a1, body, want, side)?;
                let out = if side.subset_of(*label) {
                    Expr::Let {
                        var: var.clone(),
                        ty: ty.clone(),
                        rhs: Box::new(prhs),
                        body: Box::new(pbody),
                    }
                } else if prhs.as_value().is_some() {
                    // The binding lives on the other side and this side's
                    // share is inert, so drop it. The body cannot mention the
                    // binder here: restriction hides it.
                    pbody
                } else {
                    Expr::let_in(DROP, trhs, prhs, pbody)
                };
                Ok((out, tbody, a2))
            }
            CombExpr::InputAssign { var, value } => {
                let mut a = assigned.clone();
                a.insert(var.clone());
                let out = if side == Label::C {
                    let v = value_at_side(value, Label::C)
                        .expect("computed-input values live on the compute side");
                    Expr::Assign { target: Value::Var(var.clone()), value: v }
                } else {
                    unit()
                };
                Ok((out, Type::Unit, a))
            }
            CombExpr::InputDeref { var } => {
                let ty = cx
                    .delta
                    .get(var)
                    .cloned()
                    .ok_or_else(|| TypeError::InputUndeclared(var.clone()))?;
                let out = if side == Label::C {
                    // The compute side reads the reserved cell; the prover
                    // side names the witness directly.
                    Expr::Deref { value: Value::Var(var.clone()) }
                } else {
                    Expr::Val(Value::Var(var.clone()))
                };
                Ok((out, ty, assigned.clone()))
            }
            CombExpr::Cnp(block) => {
                if side == Label::C {
                    let inner = inner_block_cx(self.ct(), block, &cx.sig.c, &cx.gamma)?;
                    let out = self.compile_block_cx(&inner, block)?;
                    Ok((out, Type::ProofOf(block.pred.clone()), assigned.clone()))
                } else {
                    Ok((unit(), Type::Unit, assigned.clone()))
                }
            }
            CombExpr::CnpRun(_) => {
                Err(TypeError::RuntimeOnlyForm("running combined block".into()))
            }
            _ => {
                let (cands, a) = self.comb.synth(cx, assigned, e)?;
                let (l, t) = self.choose(&cands, want, || format!("{e}"))?;
                if side.subset_of(l) {
                    let theta = ghost_map(&cx.sig.cp);
                    let stripped =
                        unlift_expr(e, l, Some(&theta)).expect("a typed fragment strips");
                    Ok((stripped, t, a))
                } else {
                    Ok((unit(), Type::Unit, a))
                }
            }
        }
    }

    /// The compiled form of one block: reserve a cell per computed input,
    /// run the compute side for its effects with inputs redirected to the
    /// cells, read the cells back, and prove the prover side, binding givens
    /// first and computed inputs after.
    fn compile_block_cx(&self, inner: &Cx, block: &CnpBlock) -> Result<Expr> {
        let want = LabeledType { ty: Type::Bool, label: Label::P };
        let none = ASet::new();
        let (cbody, effect_ty, _) = self.project(inner, &none, &block.body, &want, Label::C)?;
        let (pbody, _, _) = self.project(inner, &none, &block.body, &want, Label::P)?;

        let inputs: Vec<(Name, Type)> =
            block.pub_inputs.iter().chain(&block.sec_inputs).cloned().collect();
        let mut replace: BTreeMap<Name, Value> = BTreeMap::new();
        for (y, _, v) in block.pub_given.iter().chain(&block.sec_given) {
            replace.insert(y.clone(), v.clone());
        }
        for (x, _) in &inputs {
            replace.insert(x.clone(), Value::Var(ref_cell(x)));
        }
        let cbody = cbody.subst(&replace);

        let binders = |given: &[(Name, Type, Value)], computed: &[(Name, Type)]| {
            given
                .iter()
                .map(|(y, t, _)| (y.clone(), t.clone()))
                .chain(computed.iter().cloned())
                .collect::<Vec<_>>()
        };
        let args = |given: &[(Name, Type, Value)], computed: &[(Name, Type)]| {
            given
                .iter()
                .map(|(_, _, v)| v.clone())
                .chain(computed.iter().map(|(x, _)| Value::Var(read_back(x))))
                .collect::<Vec<_>>()
        };
        let mut out = Expr::Prove(ProveForm {
            pred: block.pred.clone(),
            pub_binders: binders(&block.pub_given, &block.pub_inputs),
            sec_binders: binders(&block.sec_given, &block.sec_inputs),
            body: Box::new(pbody),
            pub_args: args(&block.pub_given, &block.pub_inputs),
            sec_args: args(&block.sec_given, &block.sec_inputs),
        });
        for (x, t) in inputs.iter().rev() {
            out = Expr::let_in(
                read_back(x),
                t.clone(),
                Expr::Deref { value: Value::Var(ref_cell(x)) },
                out,
            );
        }
        out = Expr::let_in(DROP, effect_ty, cbody, out);
        for (x, t) in inputs.iter().rev() {
            out = Expr::let_in(
                ref_cell(x),
                Type::reference(t.clone()),
                Expr::Alloc { ty: t.clone() },
                out,
            );
        }
        Ok(out)
    }

    /// Replace every block in target code with its compiled form. Predicate
    /// bodies are left alone: a predicate runs in its own right, and a block
    /// inside one runs in-order there.
    pub fn full_comp(&self, sig: &StoreTy, gamma: &Gamma, e: &Expr) -> Result<Expr> {
        match e {
            Expr::Let { var, ty, rhs, body } => {
                let rhs = self.full_comp(sig, gamma, rhs)?;
                let mut g = gamma.clone();
                g.insert(var.clone(), ty.clone());
                let body = self.full_comp(sig, &g, body)?;
                Ok(Expr::Let {
                    var: var.clone(),
                    ty: ty.clone(),
                    rhs: Box::new(rhs),
                    body: Box::new(body),
                })
            }
            Expr::If { guard, then_branch, else_branch } => Ok(Expr::If {
                guard: guard.clone(),
                then_branch: Box::new(self.full_comp(sig, gamma, then_branch)?),
                else_branch: Box::new(self.full_comp(sig, gamma, else_branch)?),
            }),
            Expr::Cnp(block) => {
                let host: LabeledGamma = gamma
                    .iter()
                    .map(|(x, t)| (x.clone(), LabeledType { ty: t.clone(), label: Label::C }))
                    .collect();
                let inner = inner_block_cx(self.ct(), block, sig, &host)?;
                self.compile_block_cx(&inner, block)
            }
            _ => Ok(e.clone()),
        }
    }

    /// Stamp every value in a combined expression with the procedures it is
    /// visible to, making the same choices as `project`, so the stamps drive
    /// runtime projection without types.
    pub fn annotate(
        &self,
        cx: &Cx,
        assigned: &ASet,
        e: &CombExpr,
        want: &LabeledType,
    ) -> Result<(AnnExpr, ASet)> {
        match e {
            CombExpr::If { guard, then_branch, else_branch } => {
                let lg = self.guard_label(cx, guard)?;
                let narrowed =
                    self.narrow_if(cx, assigned, then_branch, else_branch, want, guard)?;
                let (p1, a1) = self.annotate(cx, assigned, then_branch, &narrowed)?;
                let (p2, _) = self.annotate(cx, assigned, else_branch, &narrowed)?;
                let out = AnnExpr::If {
                    guard: AnnValue::lift(guard, lg),
                    then_branch: Box::new(p1),
                    else_branch: Box::new(p2),
                };
                Ok((out, a1))
            }
            CombExpr::Let { var, ty, label, rhs, body } => {
                let want_rhs = LabeledType { ty: ty.clone(), label: *label };
                let (arhs, a1) = self.annotate(cx, assigned, rhs, &want_rhs)?;
                let mut inner = cx.clone();
                inner.gamma.insert(var.clone(), want_rhs);
                let (abody, a2) = self.annotate(&inner, &a1, body, want)?;
                let out = AnnExpr::Let {
                    var: var.clone(),
                    ty: ty.clone(),
                    label: *label,
                    rhs: Box::new(arhs),
                    body: Box::new(abody),
                };
                Ok((out, a2))
            }
            CombExpr::InputAssign { var, value } => {
                let mut a = assigned.clone();
                a.insert(var.clone());
                let out = AnnExpr::InputAssign {
                    var: var.clone(),
                    value: AnnValue::lift(value, Label::C),
                };
                Ok((out, a))
            }
            CombExpr::InputDeref { var } => {
                Ok((AnnExpr::InputDeref { var: var.clone() }, assigned.clone()))
            }
            CombExpr::Cnp(block) => {
                let inner = inner_block_cx(self.ct(), block, &cx.sig.c, &cx.gamma)?;
                let compiled = self.compile_block_cx(&inner, block)?;
                let ann = |given: &[(Name, Type, Value)]| {
                    given.iter().map(|(_, _, v)| AnnValue::lift(v, Label::C)).collect::<Vec<_>>()
                };
                let out = AnnExpr::Cnp {
                    block: block.clone(),
                    pub_ann: ann(&block.pub_given),
                    sec_ann: ann(&block.sec_given),
                    compiled: Some(Box::new(compiled)),
                };
                Ok((out, assigned.clone()))
            }
            CombExpr::CnpRun(_) => {
                Err(TypeError::RuntimeOnlyForm("running combined block".into()))
            }
            _ => {
                let (cands, a) = self.comb.synth(cx, assigned, e)?;
                let (l, _) = self.choose(&cands, want, || format!("{e}"))?;
                Ok((lift_ann(e, l)?, a))
            }
        }
    }
}

/// Annotate a one-procedure fragment: every value at the fragment's
/// procedure, structure unchanged.
fn lift_ann(e: &CombExpr, l: Label) -> Result<AnnExpr> {
    let val = |v: &Value| AnnValue::lift(v, l);
    let vals = |vs: &[Value]| vs.iter().map(|v| AnnValue::lift(v, l)).collect::<Vec<_>>();
    Ok(match e {
        CombExpr::Val(v) => AnnExpr::Val(val(v)),
        CombExpr::Cast { class, value } => {
            AnnExpr::Cast { class: class.clone(), value: val(value) }
        }
        CombExpr::Field { value, field } => {
            AnnExpr::Field { value: val(value), field: field.clone() }
        }
        CombExpr::Call { recv, method, label, args } => AnnExpr::Call {
            recv: val(recv),
            method: method.clone(),
            label: *label,
            args: vals(args),
        },
        CombExpr::Prim { op, args } => AnnExpr::Prim { op: *op, args: vals(args) },
        CombExpr::Alloc { ty } => AnnExpr::Alloc { ty: ty.clone() },
        CombExpr::Ref { label, value } => AnnExpr::Ref { label: *label, value: val(value) },
        CombExpr::Deref { value } => AnnExpr::Deref { value: val(value) },
        CombExpr::Assign { target, value } => {
            AnnExpr::Assign { target: val(target), value: val(value) }
        }
        CombExpr::If { guard, then_branch, else_branch } => AnnExpr::If {
            guard: val(guard),
            then_branch: Box::new(lift_ann(then_branch, l)?),
            else_branch: Box::new(lift_ann(else_branch, l)?),
        },
        CombExpr::Let { var, ty, label, rhs, body } => AnnExpr::Let {
            var: var.clone(),
            ty: ty.clone(),
            label: *label,
            rhs: Box::new(lift_ann(rhs, l)?),
            body: Box::new(lift_ann(body, l)?),
        },
        CombExpr::Prove(p) => AnnExpr::Prove(ProveForm {
            pred: p.pred.clone(),
            pub_binders: p.pub_binders.clone(),
            sec_binders: p.sec_binders.clone(),
            body: p.body.clone(),
            pub_args: vals(&p.pub_args),
            sec_args: vals(&p.sec_args),
        }),
        CombExpr::Verify { proof, pred, publics } => {
            AnnExpr::Verify { proof: val(proof), pred: pred.clone(), publics: vals(publics) }
        }
        CombExpr::Cnp(_)
        | CombExpr::CnpRun(_)
        | CombExpr::InputAssign { .. }
        | CombExpr::InputDeref { .. } => {
            return Err(TypeError::NoLiftLabel { at: format!("{e}") })
        }
    })
}

/// Annotate plain target code for one procedure: the image of expression
/// lifting in the annotated world. Method bodies called from a fragment
/// enter annotated code through this. Blocks keep no compilation; a block
/// that first appears this way is only ever run, never projected.
pub fn lift_ann_target(e: &Expr, l: Label) -> AnnExpr {
    let val = |v: &Value| AnnValue::lift(v, l);
    let vals = |vs: &[Value]| vs.iter().map(|v| AnnValue::lift(v, l)).collect::<Vec<_>>();
    match e {
        Expr::Val(v) => AnnExpr::Val(val(v)),
        Expr::Cast { class, value } => AnnExpr::Cast { class: class.clone(), value: val(value) },
        Expr::Field { value, field } => {
            AnnExpr::Field { value: val(value), field: field.clone() }
        }
        Expr::Call { recv, method, args } => AnnExpr::Call {
            recv: val(recv),
            method: method.clone(),
            label: l,
            args: vals(args),
        },
        Expr::Prim { op, args } => AnnExpr::Prim { op: *op, args: vals(args) },
        Expr::Alloc { ty } => AnnExpr::Alloc { ty: ty.clone() },
        Expr::Ref { value } => AnnExpr::Ref { label: l, value: val(value) },
        Expr::Deref { value } => AnnExpr::Deref { value: val(value) },
        Expr::Assign { target, value } => {
            AnnExpr::Assign { target: val(target), value: val(value) }
        }
        Expr::If { guard, then_branch, else_branch } => AnnExpr::If {
            guard: val(guard),
            then_branch: Box::new(lift_ann_target(then_branch, l)),
            else_branch: Box::new(lift_ann_target(else_branch, l)),
        },
        Expr::Let { var, ty, rhs, body } => AnnExpr::Let {
            var: var.clone(),
            ty: ty.clone(),
            label: l,
            rhs: Box::new(lift_ann_target(rhs, l)),
            body: Box::new(lift_ann_target(body, l)),
        },
        Expr::Prove(p) => AnnExpr::Prove(ProveForm {
            pred: p.pred.clone(),
            pub_binders: p.pub_binders.clone(),
            sec_binders: p.sec_binders.clone(),
            body: p.body.clone(),
            pub_args: vals(&p.pub_args),
            sec_args: vals(&p.sec_args),
        }),
        Expr::Verify { proof, pred, publics } => {
            AnnExpr::Verify { proof: val(proof), pred: pred.clone(), publics: vals(publics) }
        }
        Expr::Cnp(block) => {
            let ann = |given: &[(Name, Type, Value)]| {
                given.iter().map(|(_, _, v)| AnnValue::lift(v, Label::C)).collect::<Vec<_>>()
            };
            AnnExpr::Cnp {
                block: block.clone(),
                pub_ann: ann(&block.pub_given),
                sec_ann: ann(&block.sec_given),
                compiled: None,
            }
        }
        Expr::CnpRun(active) => AnnExpr::CnpRun(active.clone()),
        Expr::InputAssign { var, value } => {
            AnnExpr::InputAssign { var: var.clone(), value: val(value) }
        }
        Expr::InputDeref { var } => AnnExpr::InputDeref { var: var.clone() },
    }
}

/// The one-side image of an annotated value: present only where its stamp
/// says it is visible, with paired locations split apart.
pub fn ann_value_at_side(v: &AnnValue, side: Label) -> Option<Value> {
    if !side.subset_of(v.label) {
        return None;
    }
    match &v.shape {
        AnnShape::Var(x) => Some(Value::Var(x.clone())),
        AnnShape::Unit => Some(Value::Unit),
        AnnShape::Bool(b) => Some(Value::Bool(*b)),
        AnnShape::Int(n) => Some(Value::Int(*n)),
        AnnShape::New(c, args) => {
            let args =
                args.iter().map(|a| ann_value_at_side(a, side)).collect::<Option<Vec<_>>>()?;
            Some(Value::New(c.clone(), args))
        }
        AnnShape::Proof { pred, publics } => {
            let publics =
                publics.iter().map(|a| ann_value_at_side(a, side)).collect::<Option<Vec<_>>>()?;
            Some(Value::Proof { pred: pred.clone(), publics })
        }
        AnnShape::LocC(i) if side == Label::C => Some(Value::Loc(*i)),
        AnnShape::LocP(i) if side == Label::P => Some(Value::Loc(*i)),
        AnnShape::LocCP(i, j) => Some(Value::Loc(if side == Label::C { *i } else { *j })),
        _ => None,
    }
}

/// One procedure of an annotated expression, read off the value stamps.
/// Total on anything the annotation pass produces; the only failure is a
/// conditional whose guard this side cannot see and whose branches differ.
pub fn project_ann(e: &AnnExpr, side: Label) -> Result<Expr> {
    let strip = |v: &AnnValue| ann_value_at_side(v, side);
    // A value position that must be present once the form is kept.
    let need = |v: &AnnValue| {
        strip(v).ok_or_else(|| TypeError::NoLiftLabel {
            at: format!("a value of a form kept by the {side} procedure"),
        })
    };
    let needs = |vs: &[AnnValue]| vs.iter().map(need).collect::<Result<Vec<_>>>();
    Ok(match e {
        AnnExpr::Val(v) => Expr::Val(strip(v).unwrap_or(Value::Unit)),
        AnnExpr::Cast { class, value } => match strip(value) {
            Some(v) => Expr::Cast { class: class.clone(), value: v },
            None => unit(),
        },
        AnnExpr::Field { value, field } => match strip(value) {
            Some(v) => Expr::Field { value: v, field: field.clone() },
            None => unit(),
        },
        AnnExpr::Call { recv, method, label: _, args } => match strip(recv) {
            Some(r) => Expr::Call { recv: r, method: method.clone(), args: needs(args)? },
            None => unit(),
        },
        AnnExpr::Prim { op, args } => {
            let stripped: Option<Vec<_>> = args.iter().map(strip).collect();
            match stripped {
                Some(args) => Expr::Prim { op: *op, args },
                None => unit(),
            }
        }
        AnnExpr::Alloc { ty } => {
            if side == Label::C {
                Expr::Alloc { ty: ty.clone() }
            } else {
                unit()
            }
        }
        AnnExpr::Ref { label, value } => {
            if side.subset_of(*label) {
                Expr::Ref { value: need(value)? }
            } else {
                unit()
            }
        }
        AnnExpr::Deref { value } => match strip(value) {
            Some(v) => Expr::Deref { value: v },
            None => unit(),
        },
        AnnExpr::Assign { target, value } => match strip(target) {
            Some(t) => Expr::Assign { target: t, value: need(value)? },
            None => unit(),
        },
        AnnExpr::If { guard, then_branch, else_branch } => {
            let p1 = project_ann(then_branch, side)?;
            let p2 = project_ann(else_branch, side)?;
            match strip(guard) {
                Some(g) => {
                    Expr::If { guard: g, then_branch: Box::new(p1), else_branch: Box::new(p2) }
                }
                None if alpha_equal(&p1, &p2) => p1,
                None => {
                    return Err(TypeError::UnprojectableIf {
                        side,
                        at: "an annotated conditional".into(),
                    })
                }
            }
        }
        AnnExpr::Let { var, ty, label, rhs, body } => {
            let prhs = project_ann(rhs, side)?;
            let pbody = project_ann(body, side)?;
            if side.subset_of(*label) {
                Expr::Let {
                    var: var.clone(),
                    ty: ty.clone(),
                    rhs: Box::new(prhs),
                    body: Box::new(pbody),
                }
            } else if prhs.as_value().is_some() {
                pbody
            } else {
                // Projected states are run, never re-checked, so the binder
                // type of a kept-for-effect right-hand side is immaterial.
                Expr::let_in(DROP, Type::Unit, prhs, pbody)
            }
        }
        AnnExpr::Prove(p) => {
            if side == Label::C {
                Expr::Prove(ProveForm {
                    pred: p.pred.clone(),
                    pub_binders: p.pub_binders.clone(),
                    sec_binders: p.sec_binders.clone(),
                    body: p.body.clone(),
                    pub_args: needs(&p.pub_args)?,
                    sec_args: needs(&p.sec_args)?,
                })
            } else {
                unit()
            }
        }
        AnnExpr::Verify { proof, pred, publics } => match strip(proof) {
            Some(v) => Expr::Verify { proof: v, pred: pred.clone(), publics: needs(publics)? },
            None => unit(),
        },
        AnnExpr::InputAssign { var, value } => {
            if side == Label::C {
                Expr::InputAssign { var: var.clone(), value: need(value)? }
            } else {
                unit()
            }
        }
        AnnExpr::InputDeref { var } => Expr::InputDeref { var: var.clone() },
        AnnExpr::Cnp { compiled, block, .. } => {
            if side == Label::C {
                let compiled = compiled.as_deref().ok_or_else(|| TypeError::RuntimeOnlyForm(
                    format!("block {} reached projection without its compiled form", block.pred),
                ))?;
                compiled.clone()
            } else {
                unit()
            }
        }
        AnnExpr::CnpRun(_) => {
            return Err(TypeError::RuntimeOnlyForm("running combined block".into()))
        }
    })
}

/// Compile every block in a program away, leaving plain target code. The
/// program must already have been checked and elaborated.
pub fn compile_program(ct: &ClassTable, prog: &Program) -> Result<Program> {
    let core = Core::new(ct);
    let comb = Comb::new(&core);
    let proj = Projector::new(&comb);
    let mut classes = Vec::new();
    for class in &prog.classes {
        let mut methods = Vec::new();
        for m in &class.methods {
            let mut gamma: Gamma = m.params.iter().cloned().collect();
            gamma.insert("this".into(), Type::Class(class.name.clone()));
            let body = proj.full_comp(&StoreTy::new(), &gamma, &m.body)?;
            methods.push(Method { body, ..m.clone() });
        }
        classes.push(ClassDecl { methods, ..class.clone() });
    }
    let main = proj.full_comp(&StoreTy::new(), &Gamma::new(), &prog.main)?;
    Ok(Program { classes, main })
}

fn host_cx_gamma(gam: &Gamma) -> LabeledGamma {
    gam.iter()
        .map(|(x, t)| (x.clone(), LabeledType { ty: t.clone(), label: Label::C }))
        .collect()
}

/// The compiled form of a single block appearing in target code.
pub fn compile_block(core: &Core<'_>, sig: &StoreTy, gam: &Gamma, block: &CnpBlock) -> Result<Expr> {
    let inner = inner_block_cx(core.ct, block, sig, &host_cx_gamma(gam))?;
    let comb = Comb::new(core);
    Projector::new(&comb).compile_block_cx(&inner, block)
}

/// The annotated body of a single block appearing in target code, ready for
/// the concurrent machine to split. Given binders are not substituted.
pub fn annotate_block_body(
    core: &Core<'_>,
    sig: &StoreTy,
    gam: &Gamma,
    block: &CnpBlock,
) -> Result<AnnExpr> {
    let inner = inner_block_cx(core.ct, block, sig, &host_cx_gamma(gam))?;
    let comb = Comb::new(core);
    let proj = Projector::new(&comb);
    let want = LabeledType { ty: Type::Bool, label: Label::P };
    let (ann, _) = proj.annotate(&inner, &ASet::new(), &block.body, &want)?;
    Ok(ann)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classtable::ClassTable;
    use crate::parser::parse_program;

    const EVEN: &str = "
        main {
            let pf : ProofOf even = cnp even (pub half : Int; sec pad : Int)
                given (pub n : Int = 6) {
                half <~ 3;
                pad <~ 0;
                let h : Int@CP = !!half;
                h + h == n
            };
            verify pf proves even using (6, 3)
        }
    ";

    fn compiled(src: &str) -> (ClassTable, Program) {
        let mut prog = parse_program(src).expect("parse");
        let ct = ClassTable::build(&prog).expect("classtable");
        let core = Core::new(&ct);
        core.elaborate_program(&mut prog).expect("elaborate");
        let ct = ClassTable::build(&prog).expect("classtable");
        {
            let core = Core::new(&ct);
            core.check_program(&prog).expect("check");
        }
        let out = compile_program(&ct, &prog).expect("compile");
        (ct, out)
    }

    fn has_block(e: &Expr) -> bool {
        match e {
            Expr::Cnp(_) | Expr::CnpRun(_) => true,
            Expr::Let { rhs, body, .. } => has_block(rhs) || has_block(body),
            Expr::If { then_branch, else_branch, .. } => {
                has_block(then_branch) || has_block(else_branch)
            }
            _ => false,
        }
    }

    #[test]
    fn compiled_block_is_target_code_and_checks() {
        let (ct, prog) = compiled(EVEN);
        assert!(!has_block(&prog.main));
        let core = Core::new(&ct);
        let (ty, _) = core.check_program(&prog).expect("compiled program checks");
        assert_eq!(ty, Type::Bool);
    }

    #[test]
    fn compiled_block_shape() {
        let (_, prog) = compiled(EVEN);
        // main = let pf : Proof even = <compiled> in verify ...
        let Expr::Let { rhs, .. } = &prog.main else { panic!("main starts with a let") };
        // Cells for both computed inputs, pubs before secs.
        let Expr::Let { var, ty, rhs, .. } = rhs.as_ref() else { panic!("cell for half") };
        assert_eq!(var, "half$ref");
        assert_eq!(*ty, Type::reference(Type::Int));
        let _ = rhs;
        let mut found_prove = None;
        let mut cursor = &prog.main;
        while let Expr::Let { rhs, body, .. } = cursor {
            if let Expr::Prove(p) = rhs.as_ref() {
                found_prove = Some(p.clone());
            }
            let mut inner = rhs.as_ref();
            while let Expr::Let { rhs, body, .. } = inner {
                if let Expr::Prove(p) = rhs.as_ref() {
                    found_prove = Some(p.clone());
                }
                let _ = rhs;
                inner = body;
            }
            if let Expr::Prove(p) = inner {
                found_prove = Some(p.clone());
            }
            cursor = body;
        }
        let p = found_prove.expect("a prove in the compiled block");
        assert_eq!(p.pred, "even");
        // Given binders first, computed after, on both binder lists.
        assert_eq!(
            p.pub_binders,
            vec![("n".to_string(), Type::Int), ("half".to_string(), Type::Int)]
        );
        assert_eq!(p.sec_binders, vec![("pad".to_string(), Type::Int)]);
        assert_eq!(p.pub_args[0], Value::Int(6));
        assert_eq!(p.pub_args[1], Value::Var("half$val".into()));
        assert_eq!(p.sec_args, vec![Value::Var("pad$val".into())]);
    }

    #[test]
    fn compute_side_redirects_inputs_to_cells() {
        let (_, prog) = compiled(EVEN);
        fn find_assign(e: &Expr) -> bool {
            match e {
                Expr::Assign { target: Value::Var(x), value: Value::Int(3) } => x == "half$ref",
                Expr::Let { rhs, body, .. } => find_assign(rhs) || find_assign(body),
                Expr::If { then_branch, else_branch, .. } => {
                    find_assign(then_branch) || find_assign(else_branch)
                }
                _ => false,
            }
        }
        assert!(find_assign(&prog.main), "the compute side writes 3 into half's cell");
    }

    #[test]
    fn prover_side_reads_inputs_by_name() {
        let (_, prog) = compiled(EVEN);
        fn find_prove(e: &Expr) -> Option<&ProveForm<Value>> {
            match e {
                Expr::Prove(p) => Some(p),
                Expr::Let { rhs, body, .. } => find_prove(rhs).or_else(|| find_prove(body)),
                Expr::If { then_branch, else_branch, .. } => {
                    find_prove(then_branch).or_else(|| find_prove(else_branch))
                }
                _ => None,
            }
        }
        let p = find_prove(&prog.main).expect("prove");
        fn mentions(e: &Expr, name: &str) -> bool {
            let inv = |v: &Value| *v == Value::Var(name.to_string());
            match e {
                Expr::Val(v) => inv(v),
                Expr::Prim { args, .. } => args.iter().any(inv),
                Expr::Let { rhs, body, .. } => mentions(rhs, name) || mentions(body, name),
                Expr::If { guard, then_branch, else_branch } => {
                    inv(guard) || mentions(then_branch, name) || mentions(else_branch, name)
                }
                _ => false,
            }
        }
        assert!(mentions(&p.body, "half"), "the predicate names the witness directly");
        assert!(!mentions(&p.body, "half$ref"), "no cells inside the predicate");
    }

    #[test]
    fn invisible_guard_with_differing_branches_fails_only_at_prover() {
        let src = "
            main {
                let flag : Bool = true;
                let pf : ProofOf gated = cnp gated (pub out : Int; sec) given () {
                    out <~ 1;
                    let r : Bool@P = if flag { true } else { false };
                    r
                };
                verify pf proves gated using (1)
            }
        ";
        let mut prog = parse_program(src).expect("parse");
        let ct = ClassTable::build(&prog).expect("classtable");
        let core = Core::new(&ct);
        core.elaborate_program(&mut prog).expect("elaborate");
        let ct = ClassTable::build(&prog).expect("classtable");
        {
            let core = Core::new(&ct);
            core.check_program(&prog).expect("the source still checks");
        }
        let err = compile_program(&ct, &prog).expect_err("prover side cannot see the guard");
        match err {
            TypeError::UnprojectableIf { side, .. } => assert_eq!(side, Label::P),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn invisible_guard_with_equal_branches_projects() {
        let src = "
            main {
                let flag : Bool = true;
                let pf : ProofOf gated = cnp gated (pub out : Int; sec) given () {
                    out <~ 1;
                    let r : Bool@P = if flag { true } else { true };
                    r
                };
                verify pf proves gated using (1)
            }
        ";
        let mut prog = parse_program(src).expect("parse");
        let ct = ClassTable::build(&prog).expect("classtable");
        let core = Core::new(&ct);
        core.elaborate_program(&mut prog).expect("elaborate");
        let ct = ClassTable::build(&prog).expect("classtable");
        let out = compile_program(&ct, &prog).expect("identical branches collapse");
        let core = Core::new(&ct);
        core.check_program(&out).expect("compiled program checks");
    }

    #[test]
    fn nested_blocks_compile_away() {
        let src = "
            main {
                let pf : ProofOf outer = cnp outer (pub a : Int; sec) given () {
                    a <~ 2;
                    let q : ProofOf inner@C = cnp inner (pub b : Int; sec) given () {
                        b <~ 5;
                        let w : Int@CP = !!b;
                        w == 5
                    };
                    let av : Int@CP = !!a;
                    av == 2
                };
                verify pf proves outer using (2)
            }
        ";
        let (ct, prog) = compiled(src);
        assert!(!has_block(&prog.main));
        let core = Core::new(&ct);
        core.check_program(&prog).expect("compiled nested blocks check");
    }

    #[test]
    fn annotation_round_trips_to_the_same_compute_code() {
        let mut prog = parse_program(EVEN).expect("parse");
        let ct = ClassTable::build(&prog).expect("classtable");
        {
            let core = Core::new(&ct);
            core.elaborate_program(&mut prog).expect("elaborate");
        }
        let ct = ClassTable::build(&prog).expect("classtable");
        let core = Core::new(&ct);
        core.check_program(&prog).expect("check");
        let Expr::Let { rhs, .. } = &prog.main else { panic!("main is a let") };
        let Expr::Cnp(block) = rhs.as_ref() else { panic!("rhs is a block") };

        let ann = annotate_block_body(&core, &StoreTy::new(), &Gamma::new(), block)
            .expect("annotate");
        // Statically, both procedures of the annotated body agree with the
        // typed projection, except that input forms stay first-class.
        let p_side = project_ann(&ann, Label::P).expect("prover side");
        fn has_input_deref(e: &Expr) -> bool {
            match e {
                Expr::InputDeref { .. } => true,
                Expr::Let { rhs, body, .. } => has_input_deref(rhs) || has_input_deref(body),
                Expr::If { then_branch, else_branch, .. } => {
                    has_input_deref(then_branch) || has_input_deref(else_branch)
                }
                _ => false,
            }
        }
        assert!(has_input_deref(&p_side), "the prover keeps witness reads");
        let c_side = project_ann(&ann, Label::C).expect("compute side");
        fn has_input_assign(e: &Expr) -> bool {
            match e {
                Expr::InputAssign { .. } => true,
                Expr::Let { rhs, body, .. } => has_input_assign(rhs) || has_input_assign(body),
                Expr::If { then_branch, else_branch, .. } => {
                    has_input_assign(then_branch) || has_input_assign(else_branch)
                }
                _ => false,
            }
        }
        assert!(has_input_assign(&c_side), "the compute side keeps witness writes");
        assert!(!has_input_assign(&p_side), "witness writes are compute-only");
    }

    #[test]
    fn annotated_values_split_paired_locations() {
        let v = AnnValue::lift(&Value::LocCP(3, 7), Label::CP);
        assert_eq!(ann_value_at_side(&v, Label::C), Some(Value::Loc(3)));
        assert_eq!(ann_value_at_side(&v, Label::P), Some(Value::Loc(7)));
        let c = AnnValue::lift(&Value::LocC(4), Label::C);
        assert_eq!(ann_value_at_side(&c, Label::P), None);
        assert_eq!(ann_value_at_side(&c, Label::C), Some(Value::Loc(4)));
    }
}
