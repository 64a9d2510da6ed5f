//! The in-order combined machine: block bodies step against the shared
//! compute heap, a block-private prove heap, and the computed-input log.
//! Also the annotated mirror of the same machine, which carries visibility
//! annotations on values so runs can be projected per procedure afterwards.
//!
//! Value lifting tags a target value's locations for one procedure; lowering
//! strips a combined value down to one procedure's view; join recombines two
//! per-procedure reads. Expression lifting turns a target method body into
//! combined code at the call's label.

use crate::eval_core::{
    cast_value, eval_prim, field_value, match_proof, read_cell, stuck, Evaluator, Halt, Outcome,
    Step, StuckReason,
};
use crate::projection::{lift_ann_target, value_at_side};
use crate::syntax::{
    AnnExpr, AnnShape, AnnValue, CnpActive, CnpBlock, CombExpr, Entry, Event, Expr, Label, Name,
    Store, Value,
};
use std::collections::BTreeMap;
use std::mem;

/// Tag a target value's locations as belonging to one procedure. The paired
/// tag has no single-heap reading, so raw locations do not lift at `CP`.
pub fn lift_value(v: &Value, side: Label) -> Option<Value> {
    match v {
        Value::Var(_) | Value::Unit | Value::Bool(_) | Value::Int(_) => Some(v.clone()),
        Value::New(c, vs) => {
            let vs = vs.iter().map(|v| lift_value(v, side)).collect::<Option<Vec<_>>>()?;
            Some(Value::New(c.clone(), vs))
        }
        Value::Proof { pred, publics } => {
            let publics =
                publics.iter().map(|v| lift_value(v, side)).collect::<Option<Vec<_>>>()?;
            Some(Value::Proof { pred: pred.clone(), publics })
        }
        Value::Loc(l) => match side {
            Label::C => Some(Value::LocC(*l)),
            Label::P => Some(Value::LocP(*l)),
            Label::CP => None,
        },
        Value::LocC(_) | Value::LocP(_) | Value::LocCP(..) => None,
    }
}

/// Combine two per-procedure reads of the same cell pair. Identical values
/// join to themselves; a compute location pairs with a prove location; the
/// join is undefined anywhere the procedures genuinely disagree.
pub fn join_values(a: &Value, b: &Value) -> Option<Value> {
    if a == b {
        return Some(a.clone());
    }
    match (a, b) {
        (Value::LocC(i), Value::LocP(j)) => Some(Value::LocCP(*i, *j)),
        (Value::New(c1, vs1), Value::New(c2, vs2)) if c1 == c2 && vs1.len() == vs2.len() => {
            let vs = vs1
                .iter()
                .zip(vs2)
                .map(|(a, b)| join_values(a, b))
                .collect::<Option<Vec<_>>>()?;
            Some(Value::New(c1.clone(), vs))
        }
        (
            Value::Proof { pred: p1, publics: vs1 },
            Value::Proof { pred: p2, publics: vs2 },
        ) if p1 == p2 && vs1.len() == vs2.len() => {
            let publics = vs1
                .iter()
                .zip(vs2)
                .map(|(a, b)| join_values(a, b))
                .collect::<Option<Vec<_>>>()?;
            Some(Value::Proof { pred: p1.clone(), publics })
        }
        _ => None,
    }
}

/// Lift a target method body to combined code at the call's label: lets,
/// refs, and calls take the label, embedded values lift, block forms pass
/// through untouched.
pub fn comb_lift(e: &Expr, label: Label) -> Result<CombExpr, StuckReason> {
    let val = |v: &Value| {
        lift_value(v, label).ok_or_else(|| {
            StuckReason::NoRule(format!("cannot share {v} between procedures"))
        })
    };
    Ok(match e {
        Expr::Val(v) => CombExpr::Val(val(v)?),
        Expr::Cast { class, value } => {
            CombExpr::Cast { class: class.clone(), value: val(value)? }
        }
        Expr::Field { value, field } => {
            CombExpr::Field { value: val(value)?, field: field.clone() }
        }
        Expr::Call { recv, method, args } => CombExpr::Call {
            recv: val(recv)?,
            method: method.clone(),
            label,
            args: args.iter().map(&val).collect::<Result<_, _>>()?,
        },
        Expr::Prim { op, args } => CombExpr::Prim {
            op: *op,
            args: args.iter().map(&val).collect::<Result<_, _>>()?,
        },
        Expr::Alloc { ty } => CombExpr::Alloc { ty: ty.clone() },
        Expr::Ref { value } => CombExpr::Ref { label, value: val(value)? },
        Expr::Deref { value } => CombExpr::Deref { value: val(value)? },
        Expr::Assign { target, value } => {
            CombExpr::Assign { target: val(target)?, value: val(value)? }
        }
        Expr::If { guard, then_branch, else_branch } => CombExpr::If {
            guard: val(guard)?,
            then_branch: Box::new(comb_lift(then_branch, label)?),
            else_branch: Box::new(comb_lift(else_branch, label)?),
        },
        Expr::Let { var, ty, rhs, body } => CombExpr::Let {
            var: var.clone(),
            ty: ty.clone(),
            label,
            rhs: Box::new(comb_lift(rhs, label)?),
            body: Box::new(comb_lift(body, label)?),
        },
        Expr::Prove(p) => CombExpr::Prove(crate::syntax::ProveForm {
            pred: p.pred.clone(),
            pub_binders: p.pub_binders.clone(),
            sec_binders: p.sec_binders.clone(),
            body: p.body.clone(),
            pub_args: p.pub_args.iter().map(&val).collect::<Result<_, _>>()?,
            sec_args: p.sec_args.iter().map(&val).collect::<Result<_, _>>()?,
        }),
        Expr::Verify { proof, pred, publics } => CombExpr::Verify {
            proof: val(proof)?,
            pred: pred.clone(),
            publics: publics.iter().map(&val).collect::<Result<_, _>>()?,
        },
        Expr::Cnp(block) => CombExpr::Cnp(block.clone()),
        Expr::CnpRun(active) => CombExpr::CnpRun(active.clone()),
        Expr::InputAssign { var, value } => {
            CombExpr::InputAssign { var: var.clone(), value: val(value)? }
        }
        Expr::InputDeref { var } => CombExpr::InputDeref { var: var.clone() },
    })
}

fn lower_or_stuck(v: &Value, side: Label) -> Result<Value, Halt> {
    match value_at_side(v, side) {
        Some(v) => Ok(v),
        None => stuck(StuckReason::NoRule(format!("{v} is not visible to the {side} procedure"))),
    }
}

/// One annotated step's result.
pub(crate) enum AnnStep {
    Value(AnnValue),
    Next(AnnExpr),
}

/// How an annotated run ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnnOutcome {
    Value(AnnValue),
    Stuck(StuckReason),
    Diverged,
}

impl AnnOutcome {
    /// Forget annotations, for comparison against the plain combined run.
    pub fn erase(&self) -> Outcome {
        match self {
            AnnOutcome::Value(v) => Outcome::Value(v.erase()),
            AnnOutcome::Stuck(r) => Outcome::Stuck(r.clone()),
            AnnOutcome::Diverged => Outcome::Diverged,
        }
    }
}

fn unit_cp() -> AnnValue {
    AnnValue::new(AnnShape::Unit, Label::CP)
}

impl<'a> Evaluator<'a> {
    /// Run a block body to completion. The tail of a body is the prover-side
    /// guard, so the ambient placement label starts at P.
    pub fn run_comb(
        &mut self,
        mut e: CombExpr,
        sigma_c: &mut Store,
        sigma_p: &mut Store,
        rho: &mut BTreeMap<Name, Value>,
    ) -> Outcome {
        loop {
            if let CombExpr::Val(v) = e {
                return Outcome::Value(v);
            }
            if !self.charge() {
                return Outcome::Diverged;
            }
            match self.step_comb(e, sigma_c, sigma_p, rho, Label::P) {
                Ok(Step::Value(v)) => return Outcome::Value(v),
                Ok(Step::Next(e2)) => e = e2,
                Err(Halt::Stuck(r)) => return Outcome::Stuck(r),
                Err(Halt::Fuel) => return Outcome::Diverged,
            }
        }
    }

    /// Contract one combined redex. `amb` is the placement label of the
    /// nearest enclosing binder (P at a body's tail); it decides whether a
    /// verification is observable, mirroring where the projected copy of the
    /// fragment would run.
    pub(crate) fn step_comb(
        &mut self,
        e: CombExpr,
        sigma_c: &mut Store,
        sigma_p: &mut Store,
        rho: &mut BTreeMap<Name, Value>,
        amb: Label,
    ) -> Result<Step<CombExpr>, Halt> {
        match e {
            CombExpr::Val(v) => Ok(Step::Value(v)),
            CombExpr::Cast { class, value } => {
                Ok(Step::Value(cast_value(self.ct(), &class, value)?))
            }
            CombExpr::Field { value, field } => {
                Ok(Step::Value(field_value(self.ct(), &value, &field)?))
            }
            CombExpr::Call { recv, method, label, args } => {
                let (map, body) = self.call_parts(&recv, &method, &args)?;
                let lifted = comb_lift(body, label).map_err(Halt::Stuck)?;
                Ok(Step::Next(lifted.subst(&map)))
            }
            CombExpr::Prim { op, args } => Ok(Step::Value(eval_prim(op, &args)?)),
            CombExpr::Alloc { .. } => {
                let loc = sigma_c.alloc(Entry::Bot);
                self.emit(Event::Alloc { loc, value: None });
                Ok(Step::Value(Value::LocC(loc)))
            }
            CombExpr::Ref { label, value } => match label {
                Label::C => {
                    let v = lower_or_stuck(&value, Label::C)?;
                    let loc = sigma_c.alloc(Entry::Val(v.clone()));
                    self.emit(Event::Alloc { loc, value: Some(v) });
                    Ok(Step::Value(Value::LocC(loc)))
                }
                Label::P => {
                    let v = lower_or_stuck(&value, Label::P)?;
                    let loc = sigma_p.alloc(Entry::Val(v));
                    Ok(Step::Value(Value::LocP(loc)))
                }
                Label::CP => {
                    let vc = lower_or_stuck(&value, Label::C)?;
                    let vp = lower_or_stuck(&value, Label::P)?;
                    let lc = sigma_c.alloc(Entry::Val(vc.clone()));
                    let lp = sigma_p.alloc(Entry::Val(vp));
                    self.emit(Event::Alloc { loc: lc, value: Some(vc) });
                    Ok(Step::Value(Value::LocCP(lc, lp)))
                }
            },
            CombExpr::Deref { value } => match value {
                Value::LocC(l) => {
                    let v = read_cell(sigma_c, l)?;
                    Ok(Step::Value(lift_or_stuck(&v, Label::C)?))
                }
                Value::LocP(l) => {
                    let v = read_cell(sigma_p, l)?;
                    Ok(Step::Value(lift_or_stuck(&v, Label::P)?))
                }
                Value::LocCP(lc, lp) => {
                    let vc = lift_or_stuck(&read_cell(sigma_c, lc)?, Label::C)?;
                    let vp = lift_or_stuck(&read_cell(sigma_p, lp)?, Label::P)?;
                    match join_values(&vc, &vp) {
                        Some(v) => Ok(Step::Value(v)),
                        None => stuck(StuckReason::JoinMismatch(format!(
                            "cell pair ({lc}, {lp}): {vc} versus {vp}"
                        ))),
                    }
                }
                v => stuck(StuckReason::NoRule(format!("heap access through {v}"))),
            },
            CombExpr::Assign { target, value } => match target {
                Value::LocC(l) => {
                    if !sigma_c.contains(l) {
                        return stuck(StuckReason::DanglingLoc(l));
                    }
                    let v = lower_or_stuck(&value, Label::C)?;
                    sigma_c.set(l, v.clone());
                    self.emit(Event::Set { loc: l, value: v });
                    Ok(Step::Value(Value::Unit))
                }
                Value::LocP(l) => {
                    if !sigma_p.contains(l) {
                        return stuck(StuckReason::DanglingLoc(l));
                    }
                    let v = lower_or_stuck(&value, Label::P)?;
                    sigma_p.set(l, v);
                    Ok(Step::Value(Value::Unit))
                }
                Value::LocCP(lc, lp) => {
                    if !sigma_c.contains(lc) || !sigma_p.contains(lp) {
                        return stuck(StuckReason::DanglingLoc(if sigma_c.contains(lc) {
                            lp
                        } else {
                            lc
                        }));
                    }
                    let vc = lower_or_stuck(&value, Label::C)?;
                    let vp = lower_or_stuck(&value, Label::P)?;
                    sigma_c.set(lc, vc.clone());
                    sigma_p.set(lp, vp);
                    self.emit(Event::Set { loc: lc, value: vc });
                    Ok(Step::Value(Value::Unit))
                }
                v => stuck(StuckReason::NoRule(format!("heap access through {v}"))),
            },
            CombExpr::If { guard, then_branch, else_branch } => match guard.as_bool() {
                Some(true) => Ok(Step::Next(*then_branch)),
                Some(false) => Ok(Step::Next(*else_branch)),
                None => stuck(StuckReason::NoRule(format!("if on non-boolean {guard}"))),
            },
            CombExpr::Let { var, ty, label, rhs, body } => {
                if let CombExpr::Val(v) = *rhs {
                    return Ok(Step::Next(body.subst1(&var, &v)));
                }
                match self.step_comb(*rhs, sigma_c, sigma_p, rho, label)? {
                    Step::Value(v) => Ok(Step::Next(body.subst1(&var, &v))),
                    Step::Next(r2) => Ok(Step::Next(CombExpr::Let {
                        var,
                        ty,
                        label,
                        rhs: Box::new(r2),
                        body,
                    })),
                }
            }
            CombExpr::Prove(p) => {
                let pub_args = lower_all(&p.pub_args, Label::C)?;
                let sec_args = lower_all(&p.sec_args, Label::C)?;
                let v = self.run_prove(
                    &p.pred,
                    &p.pub_binders,
                    &p.sec_binders,
                    &p.body,
                    &pub_args,
                    &sec_args,
                )?;
                Ok(Step::Value(v))
            }
            CombExpr::Verify { proof, pred, publics } => {
                let (ok, offered) = match_proof(&proof, &pred, &publics)?;
                if amb != Label::P {
                    self.emit(Event::Verif { pred, publics: offered, ok });
                }
                Ok(Step::Value(Value::Bool(ok)))
            }
            CombExpr::InputAssign { var, value } => {
                if rho.contains_key(&var) {
                    return stuck(StuckReason::InputReassigned(var));
                }
                self.emit(Event::SetInput { var: var.clone(), value: value.clone() });
                rho.insert(var, value);
                Ok(Step::Value(Value::Unit))
            }
            CombExpr::InputDeref { var } => match rho.get(&var) {
                Some(v) => Ok(Step::Value(v.clone())),
                None => stuck(StuckReason::InputUnassigned(var)),
            },
            CombExpr::Cnp(block) => {
                let active = self.cnp_init(&block, sigma_c)?;
                Ok(Step::Next(CombExpr::CnpRun(active)))
            }
            CombExpr::CnpRun(active) => match self.step_block(active, sigma_c)? {
                Step::Value(v) => Ok(Step::Value(v)),
                Step::Next(a) => Ok(Step::Next(CombExpr::CnpRun(a))),
            },
        }
    }

    /// Enter a block: reserve one compute cell per computed input, publics
    /// before secrets, and bind the explicit values in the body. The block
    /// gets a fresh prove heap and an empty input log.
    pub(crate) fn cnp_init(
        &mut self,
        block: &CnpBlock,
        sigma_c: &mut Store,
    ) -> Result<CnpActive, Halt> {
        let mut map = BTreeMap::new();
        for (y, _, v) in block.pub_given.iter().chain(&block.sec_given) {
            if !v.closed() || !v.loc_free() {
                return stuck(StuckReason::NoRule(format!(
                    "block binding {y} is not a first-order value: {v}"
                )));
            }
            map.insert(y.clone(), v.clone());
        }
        let mut phi = BTreeMap::new();
        for (x, _) in block.pub_inputs.iter().chain(&block.sec_inputs) {
            let loc = sigma_c.alloc(Entry::Bot);
            self.emit(Event::Alloc { loc, value: None });
            phi.insert(x.clone(), loc);
        }
        Ok(CnpActive {
            pred: block.pred.clone(),
            pub_inputs: block.pub_inputs.clone(),
            sec_inputs: block.sec_inputs.clone(),
            phi,
            pub_vals: block.pub_given.iter().map(|(_, _, v)| v.clone()).collect(),
            sec_vals: block.sec_given.iter().map(|(_, _, v)| v.clone()).collect(),
            body: Box::new(block.body.subst(&map)),
            sigma_p: Store::new(0),
            rho: BTreeMap::new(),
        })
    }

    /// Advance a running block one step. A body finished in True commits the
    /// computed inputs to their reserved cells (silently; the in-block
    /// writes already produced the observable events) and yields the proof;
    /// a body finished in False is stuck with no proof to give. Otherwise
    /// the body steps in the combined machine and the step's events are
    /// renamed from input names to their cells.
    pub(crate) fn step_block(
        &mut self,
        mut active: CnpActive,
        sigma_c: &mut Store,
    ) -> Result<Step<CnpActive>, Halt> {
        match active.body.as_value() {
            Some(Value::Bool(true)) => {
                let mut publics = active.pub_vals.clone();
                let mut secrets = active.sec_vals.clone();
                for (bucket, inputs) in
                    [(&mut publics, &active.pub_inputs), (&mut secrets, &active.sec_inputs)]
                {
                    for (x, _) in inputs {
                        let Some(v) = active.rho.get(x) else {
                            return stuck(StuckReason::InputUnassigned(x.clone()));
                        };
                        let Some(loc) = active.phi.get(x) else {
                            return stuck(StuckReason::NoRule(format!("no cell for input {x}")));
                        };
                        sigma_c.set(*loc, v.clone());
                        bucket.push(v.clone());
                    }
                }
                self.emit(Event::Gen {
                    pred: active.pred.clone(),
                    publics: publics.clone(),
                    secrets,
                });
                Ok(Step::Value(Value::Proof { pred: active.pred, publics }))
            }
            Some(Value::Bool(false)) => stuck(StuckReason::BlockFalse(active.pred)),
            Some(v) => {
                stuck(StuckReason::NoRule(format!("block for {} finished with {v}", active.pred)))
            }
            None => {
                let body =
                    mem::replace(&mut active.body, Box::new(CombExpr::Val(Value::Unit)));
                let before = self.trace.len();
                let res = self.step_comb(
                    *body,
                    sigma_c,
                    &mut active.sigma_p,
                    &mut active.rho,
                    Label::P,
                );
                for ev in &mut self.trace[before..] {
                    *ev = ev.project_inputs(&active.phi);
                }
                active.body = Box::new(match res? {
                    Step::Value(v) => CombExpr::Val(v),
                    Step::Next(e) => e,
                });
                Ok(Step::Next(active))
            }
        }
    }

    /// Run an annotated block body to completion.
    pub fn run_ann(
        &mut self,
        mut e: AnnExpr,
        sigma_c: &mut Store,
        sigma_p: &mut Store,
        rho: &mut BTreeMap<Name, Value>,
    ) -> AnnOutcome {
        loop {
            if let AnnExpr::Val(v) = e {
                return AnnOutcome::Value(v);
            }
            if !self.charge() {
                return AnnOutcome::Diverged;
            }
            match self.step_ann(e, sigma_c, sigma_p, rho) {
                Ok(AnnStep::Value(v)) => return AnnOutcome::Value(v),
                Ok(AnnStep::Next(e2)) => e = e2,
                Err(Halt::Stuck(r)) => return AnnOutcome::Stuck(r),
                Err(Halt::Fuel) => return AnnOutcome::Diverged,
            }
        }
    }

    /// Contract one annotated redex. Mirrors `step_comb` rule for rule; the
    /// annotations carry each fragment's placement, so observability of a
    /// verification comes from the proof value's annotation rather than an
    /// ambient label.
    pub(crate) fn step_ann(
        &mut self,
        e: AnnExpr,
        sigma_c: &mut Store,
        sigma_p: &mut Store,
        rho: &mut BTreeMap<Name, Value>,
    ) -> Result<AnnStep, Halt> {
        match e {
            AnnExpr::Val(v) => Ok(AnnStep::Value(v)),
            AnnExpr::Cast { class, value } => {
                cast_value(self.ct(), &class, value.erase())?;
                Ok(AnnStep::Value(value))
            }
            AnnExpr::Field { value, field } => {
                let AnnShape::New(class, args) = &value.shape else {
                    return stuck(StuckReason::NoRule(format!(
                        "field access on {}",
                        value.erase()
                    )));
                };
                let Some(fields) = self.ct().fields(class) else {
                    return stuck(StuckReason::NoSuchField {
                        class: class.clone(),
                        field: field.clone(),
                    });
                };
                match fields.iter().position(|(f, _)| f == &field) {
                    Some(i) if i < args.len() => Ok(AnnStep::Value(args[i].relabel(value.label))),
                    _ => stuck(StuckReason::NoSuchField { class: class.clone(), field }),
                }
            }
            AnnExpr::Call { recv, method, label, args } => {
                let erased = recv.erase();
                let Value::New(class, _) = &erased else {
                    return stuck(StuckReason::NoRule(format!("call on non-object {erased}")));
                };
                let Some((params, body)) = self.ct().mbody(&method, class) else {
                    return stuck(StuckReason::NoSuchMethod {
                        class: class.clone(),
                        method,
                    });
                };
                if params.len() != args.len() {
                    return stuck(StuckReason::NoRule(format!(
                        "{method} expects {} arguments, got {}",
                        params.len(),
                        args.len()
                    )));
                }
                let mut map: BTreeMap<Name, AnnValue> =
                    params.into_iter().zip(args).collect();
                map.insert("this".into(), recv);
                Ok(AnnStep::Next(lift_ann_target(body, label).subst(&map)))
            }
            AnnExpr::Prim { op, args } => {
                let label = args.first().map(|a| a.label).unwrap_or(Label::CP);
                let erased: Vec<Value> = args.iter().map(AnnValue::erase).collect();
                let v = eval_prim(op, &erased)?;
                Ok(AnnStep::Value(AnnValue::lift(&v, label)))
            }
            AnnExpr::Alloc { .. } => {
                let loc = sigma_c.alloc(Entry::Bot);
                self.emit(Event::Alloc { loc, value: None });
                Ok(AnnStep::Value(AnnValue::new(AnnShape::LocC(loc), Label::C)))
            }
            AnnExpr::Ref { label, value } => {
                let erased = value.erase();
                match label {
                    Label::C => {
                        let v = lower_or_stuck(&erased, Label::C)?;
                        let loc = sigma_c.alloc(Entry::Val(v.clone()));
                        self.emit(Event::Alloc { loc, value: Some(v) });
                        Ok(AnnStep::Value(AnnValue::new(AnnShape::LocC(loc), Label::C)))
                    }
                    Label::P => {
                        let v = lower_or_stuck(&erased, Label::P)?;
                        let loc = sigma_p.alloc(Entry::Val(v));
                        Ok(AnnStep::Value(AnnValue::new(AnnShape::LocP(loc), Label::P)))
                    }
                    Label::CP => {
                        let vc = lower_or_stuck(&erased, Label::C)?;
                        let vp = lower_or_stuck(&erased, Label::P)?;
                        let lc = sigma_c.alloc(Entry::Val(vc.clone()));
                        let lp = sigma_p.alloc(Entry::Val(vp));
                        self.emit(Event::Alloc { loc: lc, value: Some(vc) });
                        Ok(AnnStep::Value(AnnValue::new(
                            AnnShape::LocCP(lc, lp),
                            Label::CP,
                        )))
                    }
                }
            }
            AnnExpr::Deref { value } => match value.shape {
                AnnShape::LocC(l) => {
                    let v = lift_or_stuck(&read_cell(sigma_c, l)?, Label::C)?;
                    Ok(AnnStep::Value(AnnValue::lift(&v, Label::C)))
                }
                AnnShape::LocP(l) => {
                    let v = lift_or_stuck(&read_cell(sigma_p, l)?, Label::P)?;
                    Ok(AnnStep::Value(AnnValue::lift(&v, Label::P)))
                }
                AnnShape::LocCP(lc, lp) => {
                    let vc = lift_or_stuck(&read_cell(sigma_c, lc)?, Label::C)?;
                    let vp = lift_or_stuck(&read_cell(sigma_p, lp)?, Label::P)?;
                    match join_values(&vc, &vp) {
                        Some(v) => Ok(AnnStep::Value(AnnValue::lift(&v, Label::CP))),
                        None => stuck(StuckReason::JoinMismatch(format!(
                            "cell pair ({lc}, {lp}): {vc} versus {vp}"
                        ))),
                    }
                }
                _ => stuck(StuckReason::NoRule(format!(
                    "heap access through {}",
                    value.erase()
                ))),
            },
            AnnExpr::Assign { target, value } => {
                let erased = value.erase();
                match target.shape {
                    AnnShape::LocC(l) => {
                        if !sigma_c.contains(l) {
                            return stuck(StuckReason::DanglingLoc(l));
                        }
                        let v = lower_or_stuck(&erased, Label::C)?;
                        sigma_c.set(l, v.clone());
                        self.emit(Event::Set { loc: l, value: v });
                        Ok(AnnStep::Value(unit_cp()))
                    }
                    AnnShape::LocP(l) => {
                        if !sigma_p.contains(l) {
                            return stuck(StuckReason::DanglingLoc(l));
                        }
                        let v = lower_or_stuck(&erased, Label::P)?;
                        sigma_p.set(l, v);
                        Ok(AnnStep::Value(unit_cp()))
                    }
                    AnnShape::LocCP(lc, lp) => {
                        if !sigma_c.contains(lc) || !sigma_p.contains(lp) {
                            return stuck(StuckReason::DanglingLoc(
                                if sigma_c.contains(lc) { lp } else { lc },
                            ));
                        }
                        let vc = lower_or_stuck(&erased, Label::C)?;
                        let vp = lower_or_stuck(&erased, Label::P)?;
                        sigma_c.set(lc, vc.clone());
                        sigma_p.set(lp, vp);
                        self.emit(Event::Set { loc: lc, value: vc });
                        Ok(AnnStep::Value(unit_cp()))
                    }
                    _ => stuck(StuckReason::NoRule(format!(
                        "heap access through {}",
                        target.erase()
                    ))),
                }
            }
            AnnExpr::If { guard, then_branch, else_branch } => match guard.shape {
                AnnShape::Bool(true) => Ok(AnnStep::Next(*then_branch)),
                AnnShape::Bool(false) => Ok(AnnStep::Next(*else_branch)),
                _ => stuck(StuckReason::NoRule(format!(
                    "if on non-boolean {}",
                    guard.erase()
                ))),
            },
            AnnExpr::Let { var, ty, label, rhs, body } => {
                if let AnnExpr::Val(v) = *rhs {
                    return Ok(AnnStep::Next(body.subst1(&var, &v)));
                }
                match self.step_ann(*rhs, sigma_c, sigma_p, rho)? {
                    AnnStep::Value(v) => Ok(AnnStep::Next(body.subst1(&var, &v))),
                    AnnStep::Next(r2) => Ok(AnnStep::Next(AnnExpr::Let {
                        var,
                        ty,
                        label,
                        rhs: Box::new(r2),
                        body,
                    })),
                }
            }
            AnnExpr::Prove(p) => {
                let pub_args = lower_all(&erase_all(&p.pub_args), Label::C)?;
                let sec_args = lower_all(&erase_all(&p.sec_args), Label::C)?;
                let v = self.run_prove(
                    &p.pred,
                    &p.pub_binders,
                    &p.sec_binders,
                    &p.body,
                    &pub_args,
                    &sec_args,
                )?;
                Ok(AnnStep::Value(AnnValue::lift(&v, Label::C)))
            }
            AnnExpr::Verify { proof, pred, publics } => {
                let erased_proof = proof.erase();
                let erased_publics = erase_all(&publics);
                let (ok, offered) = match_proof(&erased_proof, &pred, &erased_publics)?;
                if proof.label != Label::P {
                    self.emit(Event::Verif { pred, publics: offered, ok });
                }
                Ok(AnnStep::Value(AnnValue::new(AnnShape::Bool(ok), proof.label)))
            }
            AnnExpr::InputAssign { var, value } => {
                if rho.contains_key(&var) {
                    return stuck(StuckReason::InputReassigned(var));
                }
                let v = value.erase();
                self.emit(Event::SetInput { var: var.clone(), value: v.clone() });
                rho.insert(var, v);
                Ok(AnnStep::Value(unit_cp()))
            }
            AnnExpr::InputDeref { var } => match rho.get(&var) {
                Some(v) => Ok(AnnStep::Value(AnnValue::lift(v, Label::CP))),
                None => stuck(StuckReason::InputUnassigned(var)),
            },
            AnnExpr::Cnp { block, .. } => {
                let active = self.cnp_init(&block, sigma_c)?;
                Ok(AnnStep::Next(AnnExpr::CnpRun(active)))
            }
            AnnExpr::CnpRun(active) => match self.step_block(active, sigma_c)? {
                Step::Value(v) => Ok(AnnStep::Value(AnnValue::lift(&v, Label::C))),
                Step::Next(a) => Ok(AnnStep::Next(AnnExpr::CnpRun(a))),
            },
        }
    }
}

fn lift_or_stuck(v: &Value, side: Label) -> Result<Value, Halt> {
    match lift_value(v, side) {
        Some(v) => Ok(v),
        None => stuck(StuckReason::NoRule(format!("stored value {v} does not lift at {side}"))),
    }
}

fn lower_all(vs: &[Value], side: Label) -> Result<Vec<Value>, Halt> {
    vs.iter().map(|v| lower_or_stuck(v, side)).collect()
}

fn erase_all(vs: &[AnnValue]) -> Vec<Value> {
    vs.iter().map(AnnValue::erase).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classtable::ClassTable;
    use crate::eval_core::{RunResult, DEFAULT_FUEL};
    use crate::parser::parse_program;
    use crate::projection::{annotate_block_body, compile_program};
    use crate::syntax::{Program, Type};
    use crate::typing_core::{Core, Gamma, StoreTy};

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

    fn checked(src: &str) -> (ClassTable, Program) {
        let mut prog = parse_program(src).expect("parse");
        let ct = ClassTable::build(&prog).expect("classtable");
        Core::new(&ct).elaborate_program(&mut prog).expect("elaborate");
        let ct = ClassTable::build(&prog).expect("classtable");
        Core::new(&ct).check_program(&prog).expect("check");
        (ct, prog)
    }

    fn run(src: &str) -> RunResult {
        let (ct, prog) = checked(src);
        Evaluator::run_program(&ct, &prog, 0, DEFAULT_FUEL)
    }

    /// Run the program as written and as compiled, from the same seed.
    fn run_both(src: &str) -> (RunResult, RunResult) {
        let (ct, prog) = checked(src);
        let compiled = compile_program(&ct, &prog).expect("compile");
        let source = Evaluator::run_program(&ct, &prog, 0, DEFAULT_FUEL);
        let target = Evaluator::run_program(&ct, &compiled, 0, DEFAULT_FUEL);
        (source, target)
    }

    fn int(n: i64) -> Value {
        Value::Int(n)
    }

    #[test]
    fn block_runs_in_order() {
        let r = run(EVEN);
        assert_eq!(r.outcome, Outcome::Value(Value::Bool(true)));
        assert_eq!(
            r.trace,
            vec![
                Event::Alloc { loc: 0, value: None },
                Event::Alloc { loc: 1, value: None },
                Event::Set { loc: 0, value: int(3) },
                Event::Set { loc: 1, value: int(0) },
                Event::Gen { pred: "even".into(), publics: vec![int(6), int(3)], secrets: vec![int(0)] },
                Event::Verif { pred: "even".into(), publics: vec![int(6), int(3)], ok: true },
            ]
        );
        assert_eq!(r.store.get(0), Some(&Entry::Val(int(3))));
        assert_eq!(r.store.get(1), Some(&Entry::Val(int(0))));
    }

    #[test]
    fn block_and_compilation_agree() {
        let (source, target) = run_both(EVEN);
        assert_eq!(source.outcome, target.outcome);
        assert_eq!(source.trace, target.trace);
        assert_eq!(source.store, target.store);
    }

    #[test]
    fn false_guard_sticks_in_both_machines() {
        let src = EVEN.replace("Int = 6", "Int = 7").replace("using (6, 3)", "using (7, 3)");
        let (source, target) = run_both(&src);
        assert_eq!(source.outcome, Outcome::Stuck(StuckReason::BlockFalse("even".into())));
        assert_eq!(target.outcome, Outcome::Stuck(StuckReason::ProveFalse("even".into())));
        // Everything before the failed proof matches.
        assert_eq!(source.trace, target.trace);
    }

    const MIX: &str = "
        main {
            let pf : ProofOf mix = cnp mix (pub out : Int; sec pad : Int) given () {
                let rc : Ref Int@C = ref@C 10;
                let rp : Ref Int@P = ref@P 20;
                let rcp : Ref Int@CP = ref@CP 30;
                rc := 11;
                rp := 21;
                rcp := 31;
                let v : Int@CP = !rcp;
                out <~ v;
                pad <~ 0;
                let w : Int@P = !rp;
                w == 21
            };
            verify pf proves mix using (31)
        }
    ";

    #[test]
    fn prover_side_state_is_silent() {
        let r = run(MIX);
        assert_eq!(r.outcome, Outcome::Value(Value::Bool(true)));
        assert_eq!(
            r.trace,
            vec![
                Event::Alloc { loc: 0, value: None },
                Event::Alloc { loc: 1, value: None },
                Event::Alloc { loc: 2, value: Some(int(10)) },
                Event::Alloc { loc: 3, value: Some(int(30)) },
                Event::Set { loc: 2, value: int(11) },
                Event::Set { loc: 3, value: int(31) },
                Event::Set { loc: 0, value: int(31) },
                Event::Set { loc: 1, value: int(0) },
                Event::Gen { pred: "mix".into(), publics: vec![int(31)], secrets: vec![int(0)] },
                Event::Verif { pred: "mix".into(), publics: vec![int(31)], ok: true },
            ]
        );
    }

    #[test]
    fn mixed_references_compile_adequately() {
        let (source, target) = run_both(MIX);
        assert_eq!(source.outcome, target.outcome);
        assert_eq!(source.trace, target.trace);
        assert_eq!(source.store, target.store);
    }

    #[test]
    fn lifted_method_bodies_run_in_blocks() {
        let src = "
            class Adder extends Object {
                base : Int;
                add@CP(k : Int) : Int { this.base + k }
            }
            main {
                let pf : ProofOf total = cnp total (pub out : Int; sec pad : Int)
                    given (pub g : Adder = new Adder(5)) {
                    let s : Int@CP = g.add@CP(2);
                    out <~ s;
                    pad <~ 0;
                    s == 7
                };
                verify pf proves total using (new Adder(5), 7)
            }
        ";
        let (source, target) = run_both(src);
        assert_eq!(source.outcome, Outcome::Value(Value::Bool(true)));
        assert_eq!(source.outcome, target.outcome);
        assert_eq!(source.trace, target.trace);
        assert_eq!(source.store, target.store);
    }

    #[test]
    fn nested_blocks_prove_inside_out() {
        let src = "
            main {
                let pf : ProofOf outer = cnp outer (pub x : Int; sec s : Int) given () {
                    let ip : ProofOf inner@C = cnp inner (pub y : Int; sec t : Int) given () {
                        y <~ 1;
                        t <~ 2;
                        true
                    };
                    let ok : Bool@C = verify ip proves inner using (1);
                    x <~ 3;
                    s <~ 4;
                    let g : Int@CP = !!x;
                    g == 3
                };
                verify pf proves outer using (3)
            }
        ";
        let (source, target) = run_both(src);
        assert_eq!(source.outcome, Outcome::Value(Value::Bool(true)));
        let preds: Vec<&str> = source
            .trace
            .iter()
            .filter_map(|ev| match ev {
                Event::Gen { pred, .. } => Some(pred.as_str()),
                Event::Verif { pred, .. } => Some(pred.as_str()),
                _ => None,
            })
            .collect();
        assert_eq!(preds, ["inner", "inner", "outer", "outer"]);
        assert_eq!(source.outcome, target.outcome);
        assert_eq!(source.trace, target.trace);
        assert_eq!(source.store, target.store);
    }

    #[test]
    fn block_draws_from_the_shared_fuel_pool() {
        let (ct, prog) = checked(EVEN);
        let r = Evaluator::run_program(&ct, &prog, 0, 3);
        assert_eq!(r.outcome, Outcome::Diverged);
    }

    #[test]
    fn computed_inputs_assign_once() {
        let once = CombExpr::InputAssign { var: "x".into(), value: int(1) };
        let twice = CombExpr::Let {
            var: "u".into(),
            ty: Type::Unit,
            label: Label::CP,
            rhs: Box::new(once.clone()),
            body: Box::new(CombExpr::InputAssign { var: "x".into(), value: int(2) }),
        };
        let prog = Program { classes: vec![], main: Expr::Val(Value::Unit) };
        let ct = ClassTable::build(&prog).expect("classtable");
        let mut ev = Evaluator::with_fuel(&ct, 100);
        let (mut sc, mut sp) = (Store::new(0), Store::new(0));
        let mut rho = BTreeMap::new();
        let out = ev.run_comb(twice, &mut sc, &mut sp, &mut rho);
        assert_eq!(out, Outcome::Stuck(StuckReason::InputReassigned("x".into())));
        assert_eq!(rho.get("x"), Some(&int(1)));
        assert_eq!(ev.trace, vec![Event::SetInput { var: "x".into(), value: int(1) }]);
    }

    #[test]
    fn location_tags_round_trip() {
        assert_eq!(lift_value(&Value::Loc(3), Label::C), Some(Value::LocC(3)));
        assert_eq!(lift_value(&Value::Loc(3), Label::P), Some(Value::LocP(3)));
        assert_eq!(lift_value(&Value::Loc(3), Label::CP), None);
        let pair = join_values(&Value::LocC(1), &Value::LocP(2));
        assert_eq!(pair, Some(Value::LocCP(1, 2)));
        assert_eq!(join_values(&int(1), &int(1)), Some(int(1)));
        assert_eq!(join_values(&int(1), &int(2)), None);
        let boxed = Value::New("Box".into(), vec![Value::LocC(4)]);
        let other = Value::New("Box".into(), vec![Value::LocP(9)]);
        assert_eq!(
            join_values(&boxed, &other),
            Some(Value::New("Box".into(), vec![Value::LocCP(4, 9)]))
        );
    }

    #[test]
    fn shared_code_cannot_capture_one_sided_state() {
        // A method body embedding a raw location cannot lift at CP.
        let body = Expr::Deref { value: Value::Loc(0) };
        assert!(comb_lift(&body, Label::CP).is_err());
        assert!(comb_lift(&body, Label::C).is_ok());
    }

    #[test]
    fn annotated_machine_mirrors_the_plain_one() {
        let (ct, prog) = checked(EVEN);
        let Expr::Let { rhs, .. } = &prog.main else { panic!("main starts with a let") };
        let Expr::Cnp(block) = rhs.as_ref() else { panic!("rhs is the block") };

        let core = Core::new(&ct);
        let ann = annotate_block_body(&core, &StoreTy::new(), &Gamma::new(), block)
            .expect("annotate");
        let mut ann_map = BTreeMap::new();
        let mut plain_map = BTreeMap::new();
        for (y, _, v) in block.pub_given.iter().chain(&block.sec_given) {
            ann_map.insert(y.clone(), AnnValue::lift(v, Label::CP));
            plain_map.insert(y.clone(), v.clone());
        }

        let mut ann_ev = Evaluator::with_fuel(&ct, 1_000);
        let (mut sc1, mut sp1) = (Store::new(0), Store::new(0));
        let mut rho1 = BTreeMap::new();
        let ann_out = ann_ev.run_ann(ann.subst(&ann_map), &mut sc1, &mut sp1, &mut rho1);

        let mut plain_ev = Evaluator::with_fuel(&ct, 1_000);
        let (mut sc2, mut sp2) = (Store::new(0), Store::new(0));
        let mut rho2 = BTreeMap::new();
        let plain_out =
            plain_ev.run_comb(block.body.subst(&plain_map), &mut sc2, &mut sp2, &mut rho2);

        assert_eq!(ann_out.erase(), plain_out);
        assert_eq!(ann_ev.trace, plain_ev.trace);
        assert_eq!(sc1, sc2);
        assert_eq!(sp1, sp2);
        assert_eq!(rho1, rho2);
        assert_eq!(ann_out, AnnOutcome::Value(AnnValue::new(AnnShape::Bool(true), Label::P)));
    }
}
