//! Type checking for combined blocks. Code inside a block mixes fragments
//! that belong wholly to one procedure (checked by stripping the procedure
//! wrapper and reusing the target checker over a restricted context) with the
//! block-level forms: labeled lets, conditionals whose branches may assign
//! computed inputs, the input forms themselves, and nested blocks.
//!
//! A fragment often strips at several procedures (a bare literal belongs to
//! all three), so synthesis returns the set of (procedure, type) candidates;
//! enclosing forms narrow the set. The judgment also threads the set of
//! computed inputs assigned so far: assignment adds exactly once, reads
//! require membership, branches must agree, and the block body must end with
//! every declared input assigned.

use crate::classtable::ClassTable;
use crate::parser::is_temp;
use crate::syntax::*;
use crate::typing_core::{Core, Gamma, StoreTy, TypeError};
use std::collections::{BTreeMap, BTreeSet};

type Result<T> = std::result::Result<T, TypeError>;

pub type LabeledGamma = BTreeMap<Name, LabeledType>;
pub type ASet = BTreeSet<Name>;
pub type Candidates = Vec<(Label, Type)>;

/// Store typing for a combined configuration: separate typings for the two
/// procedure stores plus one for cells that exist in both.
#[derive(Debug, Clone, Default)]
pub struct CombStoreTy {
    pub c: StoreTy,
    pub p: StoreTy,
    pub cp: BTreeMap<(Loc, Loc), Type>,
}

#[derive(Debug, Clone)]
pub struct Cx {
    pub sig: CombStoreTy,
    pub gamma: LabeledGamma,
    pub delta: BTreeMap<Name, Type>,
}

/// `τ1@l1 <: τ2@l2`: widening the procedure set is only sound for data that
/// cannot reach a mutable reference, since references are procedure-local.
pub fn labeled_subtype(ct: &ClassTable, t1: &Type, l1: Label, t2: &Type, l2: Label) -> bool {
    ct.subtype(t1, t2) && (l1 == l2 || (l2.subset_of(l1) && ct.no_refs(t1)))
}

/// The part of a labeled context usable from procedure `l`.
pub fn restrict(ct: &ClassTable, gamma: &LabeledGamma, l: Label) -> Gamma {
    gamma
        .iter()
        .filter(|(_, lt)| labeled_subtype(ct, &lt.ty, lt.label, &lt.ty, l))
        .map(|(x, lt)| (x.clone(), lt.ty.clone()))
        .collect()
}

fn relabel(gamma: &LabeledGamma, l: Label) -> LabeledGamma {
    gamma
        .iter()
        .map(|(x, lt)| (x.clone(), LabeledType { ty: lt.ty.clone(), label: l }))
        .collect()
}

/// Ghost locations stand for both-procedure cells when target typing rules
/// need a single location. Negative and deterministic in cell order.
pub(crate) fn ghost_map(cp: &BTreeMap<(Loc, Loc), Type>) -> BTreeMap<(Loc, Loc), Loc> {
    cp.keys().enumerate().map(|(i, pair)| (*pair, -(i as Loc) - 1)).collect()
}

/// Strip the procedure wrapper from a value: the inverse of value lifting.
/// Fails when the value belongs to a different procedure.
pub fn unlift_value(
    v: &Value,
    l: Label,
    theta: Option<&BTreeMap<(Loc, Loc), Loc>>,
) -> Option<Value> {
    match v {
        Value::Var(_) | Value::Unit | Value::Bool(_) | Value::Int(_) => Some(v.clone()),
        Value::New(c, args) => {
            let args =
                args.iter().map(|a| unlift_value(a, l, theta)).collect::<Option<Vec<_>>>()?;
            Some(Value::New(c.clone(), args))
        }
        Value::Proof { pred, publics } => {
            let publics =
                publics.iter().map(|a| unlift_value(a, l, theta)).collect::<Option<Vec<_>>>()?;
            Some(Value::Proof { pred: pred.clone(), publics })
        }
        Value::LocC(i) if l == Label::C => Some(Value::Loc(*i)),
        Value::LocP(i) if l == Label::P => Some(Value::Loc(*i)),
        Value::LocCP(i1, i2) if l == Label::CP => {
            theta.and_then(|th| th.get(&(*i1, *i2))).map(|g| Value::Loc(*g))
        }
        _ => None,
    }
}

/// Strip the procedure wrapper from an expression: the inverse of expression
/// lifting. Alloc, prove, and verify are untouched by lifting; the labeled
/// forms must carry exactly `l`; the input forms and blocks are never images.
pub fn unlift_expr(
    e: &CombExpr,
    l: Label,
    theta: Option<&BTreeMap<(Loc, Loc), Loc>>,
) -> Option<Expr> {
    let val = |v: &Value| unlift_value(v, l, theta);
    let vals = |vs: &[Value]| vs.iter().map(val).collect::<Option<Vec<_>>>();
    match e {
        CombExpr::Val(v) => Some(Expr::Val(val(v)?)),
        CombExpr::Cast { class, value } => {
            Some(Expr::Cast { class: class.clone(), value: val(value)? })
        }
        CombExpr::Field { value, field } => {
            Some(Expr::Field { value: val(value)?, field: field.clone() })
        }
        CombExpr::Call { recv, method, label, args } => {
            if *label != l {
                return None;
            }
            Some(Expr::Call { recv: val(recv)?, method: method.clone(), args: vals(args)? })
        }
        CombExpr::Prim { op, args } => Some(Expr::Prim { op: *op, args: vals(args)? }),
        CombExpr::Alloc { ty } => Some(Expr::Alloc { ty: ty.clone() }),
        CombExpr::Ref { label, value } => {
            if *label != l {
                return None;
            }
            Some(Expr::Ref { value: val(value)? })
        }
        CombExpr::Deref { value } => Some(Expr::Deref { value: val(value)? }),
        CombExpr::Assign { target, value } => {
            Some(Expr::Assign { target: val(target)?, value: val(value)? })
        }
        CombExpr::If { guard, then_branch, else_branch } => Some(Expr::If {
            guard: val(guard)?,
            then_branch: Box::new(unlift_expr(then_branch, l, theta)?),
            else_branch: Box::new(unlift_expr(else_branch, l, theta)?),
        }),
        CombExpr::Let { var, ty, label, rhs, body } => {
            if *label != l {
                return None;
            }
            Some(Expr::Let {
                var: var.clone(),
                ty: ty.clone(),
                rhs: Box::new(unlift_expr(rhs, l, theta)?),
                body: Box::new(unlift_expr(body, l, theta)?),
            })
        }
        CombExpr::Prove(form) => Some(Expr::Prove(ProveForm {
            pred: form.pred.clone(),
            pub_binders: form.pub_binders.clone(),
            sec_binders: form.sec_binders.clone(),
            body: form.body.clone(),
            pub_args: vals(&form.pub_args)?,
            sec_args: vals(&form.sec_args)?,
        })),
        CombExpr::Verify { proof, pred, publics } => {
            Some(Expr::Verify { proof: val(proof)?, pred: pred.clone(), publics: vals(publics)? })
        }
        CombExpr::Cnp(_) | CombExpr::CnpRun(_) => None,
        CombExpr::InputAssign { .. } | CombExpr::InputDeref { .. } => None,
    }
}

pub struct Comb<'c, 'a> {
    pub core: &'c Core<'a>,
}

impl<'c, 'a> Comb<'c, 'a> {
    pub fn new(core: &'c Core<'a>) -> Comb<'c, 'a> {
        Comb { core }
    }

    fn ct(&self) -> &ClassTable {
        self.core.ct
    }

    /// Store typing and context seen by a fragment of procedure `l`.
    fn side_view(&self, cx: &Cx, l: Label) -> (StoreTy, Gamma) {
        let sig = match l {
            Label::C => cx.sig.c.clone(),
            Label::P => cx.sig.p.clone(),
            Label::CP => {
                let theta = ghost_map(&cx.sig.cp);
                cx.sig.cp.iter().map(|(pair, t)| (theta[pair], t.clone())).collect()
            }
        };
        (sig, restrict(self.ct(), &cx.gamma, l))
    }

    pub fn value_candidates(&self, cx: &Cx, v: &Value) -> Candidates {
        let theta = ghost_map(&cx.sig.cp);
        let mut out = Vec::new();
        for l in Label::ALL {
            let Some(stripped) = unlift_value(v, l, Some(&theta)) else { continue };
            let (sig, gam) = self.side_view(cx, l);
            if let Ok(t) = self.core.synth_value(&sig, &gam, &stripped) {
                out.push((l, t));
            }
        }
        out
    }

    pub fn check_value_at(&self, cx: &Cx, v: &Value, want: &Type, l: Label) -> Result<()> {
        let theta = ghost_map(&cx.sig.cp);
        let stripped = unlift_value(v, l, Some(&theta)).ok_or_else(|| TypeError::NoLiftLabel {
            at: format!("value {v} in procedure {l}"),
        })?;
        let (sig, gam) = self.side_view(cx, l);
        self.core.check_value(&sig, &gam, &stripped, want)
    }

    fn lift_candidates(&self, cx: &Cx, e: &CombExpr) -> Result<Candidates> {
        let theta = ghost_map(&cx.sig.cp);
        let mut out = Vec::new();
        let mut last_err = None;
        for l in Label::ALL {
            let Some(stripped) = unlift_expr(e, l, Some(&theta)) else { continue };
            let (sig, gam) = self.side_view(cx, l);
            match self.core.synth_expr(&sig, &gam, &stripped) {
                Ok((t, principal)) if l.subset_of(principal) => out.push((l, t)),
                Ok(_) => {}
                Err(err) => last_err = Some(err),
            }
        }
        if out.is_empty() {
            Err(last_err.unwrap_or_else(|| TypeError::NoLiftLabel { at: format!("{e}") }))
        } else {
            Ok(out)
        }
    }

    /// Synthesize the candidate set and resulting assigned-set of a combined
    /// expression.
    pub fn synth(&self, cx: &Cx, assigned: &ASet, e: &CombExpr) -> Result<(Candidates, ASet)> {
        match e {
            CombExpr::If { guard, then_branch, else_branch } => {
                let guard_cands = self.value_candidates(cx, guard);
                if !guard_cands.iter().any(|(_, t)| *t == Type::Bool) {
                    return Err(TypeError::ShapeMismatch {
                        expected: "Bool",
                        found: guard_cands
                            .first()
                            .map(|(_, t)| t.clone())
                            .unwrap_or(Type::Unit),
                        at: format!("guard {guard}"),
                    });
                }
                let (c1, a1) = self.synth(cx, assigned, then_branch)?;
                let (c2, a2) = self.synth(cx, assigned, else_branch)?;
                if a1 != a2 {
                    return Err(TypeError::BranchAssignMismatch {
                        then_assigned: a1.iter().cloned().collect(),
                        else_assigned: a2.iter().cloned().collect(),
                    });
                }
                let inter: Candidates =
                    c1.iter().filter(|cand| c2.contains(cand)).cloned().collect();
                if inter.is_empty() {
                    return Err(TypeError::LabeledMismatch {
                        expected: cands_to_string(&c1),
                        found: cands_to_string(&c2),
                        at: "conditional branches".into(),
                    });
                }
                Ok((inter, a1))
            }
            CombExpr::Let { var, ty, label, rhs, body } => {
                self.core.wf_type(ty)?;
                let (crhs, a1) = self.synth(cx, assigned, rhs)?;
                if !crhs
                    .iter()
                    .any(|(l1, t1)| labeled_subtype(self.ct(), t1, *l1, ty, *label))
                {
                    return Err(TypeError::LabeledMismatch {
                        expected: format!("{ty}@{label}"),
                        found: cands_to_string(&crhs),
                        at: format!("let {var}"),
                    });
                }
                let mut inner = cx.clone();
                inner
                    .gamma
                    .insert(var.clone(), LabeledType { ty: ty.clone(), label: *label });
                self.synth(&inner, &a1, body)
            }
            CombExpr::InputAssign { var, value } => {
                let ty = cx
                    .delta
                    .get(var)
                    .ok_or_else(|| TypeError::InputUndeclared(var.clone()))?
                    .clone();
                if assigned.contains(var) {
                    return Err(TypeError::InputReassigned(var.clone()));
                }
                self.check_value_at(cx, value, &ty, Label::C)?;
                let mut a = assigned.clone();
                a.insert(var.clone());
                Ok((Label::ALL.iter().map(|l| (*l, Type::Unit)).collect(), a))
            }
            CombExpr::InputDeref { var } => {
                let ty = cx
                    .delta
                    .get(var)
                    .ok_or_else(|| TypeError::InputUndeclared(var.clone()))?
                    .clone();
                if !assigned.contains(var) {
                    return Err(TypeError::InputUnassigned(var.clone()));
                }
                Ok((vec![(Label::CP, ty)], assigned.clone()))
            }
            CombExpr::Cnp(block) => {
                self.check_cnp(cx, block)?;
                Ok((vec![(Label::C, Type::ProofOf(block.pred.clone()))], assigned.clone()))
            }
            CombExpr::CnpRun(_) => {
                Err(TypeError::RuntimeOnlyForm("running combined block".into()))
            }
            _ => Ok((self.lift_candidates(cx, e)?, assigned.clone())),
        }
    }

    /// Check a nested combined block: its given values must be usable from
    /// the compute procedure under an empty store typing.
    pub fn check_cnp(&self, cx: &Cx, block: &CnpBlock) -> Result<()> {
        let no_store = Cx {
            sig: CombStoreTy::default(),
            gamma: cx.gamma.clone(),
            delta: cx.delta.clone(),
        };
        for (y, t, v) in block.pub_given.iter().chain(&block.sec_given) {
            self.check_value_at(&no_store, v, t, Label::C).map_err(|e| match e {
                TypeError::NoLiftLabel { .. } => TypeError::LabelUnavailable {
                    needed: Label::C,
                    available: Label::P,
                    at: format!("given '{y}' of block {}", block.pred),
                },
                other => other,
            })?;
        }
        let inner = inner_block_cx(self.ct(), block, &cx.sig.c, &cx.gamma)?;
        self.check_block_body(&inner, block)
    }

    fn check_block_body(&self, inner: &Cx, block: &CnpBlock) -> Result<()> {
        let (cands, a_final) = self.synth(inner, &ASet::new(), &block.body)?;
        if !cands.contains(&(Label::P, Type::Bool)) {
            return Err(TypeError::LabeledMismatch {
                expected: "Bool@P".into(),
                found: cands_to_string(&cands),
                at: format!("body of block {}", block.pred),
            });
        }
        let missing: Vec<Name> =
            inner.delta.keys().filter(|x| !a_final.contains(*x)).cloned().collect();
        if !missing.is_empty() {
            return Err(TypeError::IncompleteInputs(missing));
        }
        Ok(())
    }
}

/// Build the context a block body is checked in: the host context confined to
/// compute, the givens visible to both procedures, and the computed inputs.
pub(crate) fn inner_block_cx(
    ct: &ClassTable,
    block: &CnpBlock,
    host_sig_c: &StoreTy,
    host_gamma: &LabeledGamma,
) -> Result<Cx> {
    for (_, t) in block.pub_inputs.iter().chain(&block.sec_inputs) {
        if !ct.no_refs(t) {
            return Err(TypeError::RefReachable {
                ty: t.clone(),
                at: format!("computed input of block {}", block.pred),
            });
        }
    }
    for (_, t, _) in block.pub_given.iter().chain(&block.sec_given) {
        if !ct.no_refs(t) {
            return Err(TypeError::RefReachable {
                ty: t.clone(),
                at: format!("given of block {}", block.pred),
            });
        }
    }
    let restricted: LabeledGamma = host_gamma
        .iter()
        .filter(|(_, lt)| labeled_subtype(ct, &lt.ty, lt.label, &lt.ty, Label::C))
        .map(|(x, lt)| (x.clone(), lt.clone()))
        .collect();
    let mut gamma = relabel(&restricted, Label::C);
    for (y, t, _) in block.pub_given.iter().chain(&block.sec_given) {
        gamma.insert(y.clone(), LabeledType { ty: t.clone(), label: Label::CP });
    }
    let mut delta = BTreeMap::new();
    for (x, t) in block.pub_inputs.iter().chain(&block.sec_inputs) {
        if delta.insert(x.clone(), t.clone()).is_some() {
            return Err(TypeError::DuplicateBinder(x.clone()));
        }
    }
    Ok(Cx {
        sig: CombStoreTy { c: host_sig_c.clone(), ..CombStoreTy::default() },
        gamma,
        delta,
    })
}

/// Entry point for a block in target code: given values are plain target
/// values of the host context.
pub fn check_cnp_in_target(
    core: &Core<'_>,
    sig: &StoreTy,
    gam: &Gamma,
    block: &CnpBlock,
) -> Result<()> {
    for (y, t, v) in block.pub_given.iter().chain(&block.sec_given) {
        core.wf_type(t)?;
        core.check_value(sig, gam, v, t).map_err(|e| {
            if let TypeError::Mismatch { expected, found, .. } = e {
                TypeError::Mismatch { expected, found, at: format!("given '{y}'") }
            } else {
                e
            }
        })?;
    }
    let host_gamma: LabeledGamma = gam
        .iter()
        .map(|(x, t)| (x.clone(), LabeledType { ty: t.clone(), label: Label::C }))
        .collect();
    let inner = inner_block_cx(core.ct, block, sig, &host_gamma)?;
    Comb::new(core).check_block_body(&inner, block)
}

/// Fill placeholder types and labels of `$t` binders inside a block body.
pub fn elab_cnp(
    core: &Core<'_>,
    sig: &StoreTy,
    gam: &Gamma,
    block: &mut CnpBlock,
) -> Result<()> {
    let host_gamma: LabeledGamma = gam
        .iter()
        .map(|(x, t)| (x.clone(), LabeledType { ty: t.clone(), label: Label::C }))
        .collect();
    let cx = inner_block_cx(core.ct, block, sig, &host_gamma)?;
    let comb = Comb::new(core);
    comb.elab_comb(&cx, &ASet::new(), &mut block.body)?;
    Ok(())
}

impl<'c, 'a> Comb<'c, 'a> {
    /// Elaboration mirrors synthesis shallowly; it must thread the assigned
    /// set because synthesizing a right-hand side may read computed inputs.
    pub(crate) fn elab_comb(
        &self,
        cx: &Cx,
        assigned: &ASet,
        e: &mut CombExpr,
    ) -> Result<ASet> {
        match e {
            CombExpr::Let { var, ty, label, rhs, body } => {
                self.elab_comb(cx, assigned, rhs)?;
                let (crhs, a1) = self.synth(cx, assigned, rhs)?;
                if is_temp(var) {
                    let (l, t) = pick_candidate(&crhs);
                    *ty = t;
                    *label = l;
                }
                let mut inner = cx.clone();
                inner
                    .gamma
                    .insert(var.clone(), LabeledType { ty: ty.clone(), label: *label });
                self.elab_comb(&inner, &a1, body)
            }
            CombExpr::If { then_branch, else_branch, .. } => {
                let a1 = self.elab_comb(cx, assigned, then_branch)?;
                self.elab_comb(cx, assigned, else_branch)?;
                Ok(a1)
            }
            CombExpr::InputAssign { var, .. } => {
                let mut a = assigned.clone();
                a.insert(var.clone());
                Ok(a)
            }
            CombExpr::Prove(form) => {
                let mut body_gam = Gamma::new();
                for (x, t) in form.pub_binders.iter().chain(&form.sec_binders) {
                    body_gam.insert(x.clone(), t.clone());
                }
                self.core.elab_expr(&StoreTy::new(), &body_gam, &mut form.body)?;
                Ok(assigned.clone())
            }
            CombExpr::Cnp(block) => {
                let cx2 = inner_block_cx(self.ct(), block, &cx.sig.c, &cx.gamma)?;
                self.elab_comb(&cx2, &ASet::new(), &mut block.body)?;
                Ok(assigned.clone())
            }
            _ => Ok(assigned.clone()),
        }
    }
}

/// Deterministic choice for an elaborated binder: prefer the widest
/// procedure set so the binding stays usable on both sides.
fn pick_candidate(cands: &Candidates) -> (Label, Type) {
    for want in [Label::CP, Label::C, Label::P] {
        if let Some((l, t)) = cands.iter().find(|(l, _)| *l == want) {
            return (*l, t.clone());
        }
    }
    (Label::CP, Type::Unit)
}

pub(crate) fn cands_to_string(cands: &Candidates) -> String {
    if cands.is_empty() {
        return "nothing".into();
    }
    cands
        .iter()
        .map(|(l, t)| format!("{t}@{l}"))
        .collect::<Vec<_>>()
        .join(" or ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_program;

    fn check_src(src: &str) -> Result<(Type, Label)> {
        let mut prog = parse_program(src).unwrap();
        let ct0 = ClassTable::build(&prog).unwrap();
        Core::new(&ct0).elaborate_program(&mut prog)?;
        let ct = ClassTable::build(&prog).unwrap();
        Core::new(&ct).check_program(&prog)
    }

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

    #[test]
    fn accepts_a_complete_block() {
        // The block itself is compute-pinned, so the whole main is too.
        let (t, l) = check_src(EVEN).unwrap();
        assert_eq!(t, Type::Bool);
        assert_eq!(l, Label::C);
    }

    #[test]
    fn rejects_double_assignment() {
        let src = EVEN.replace("pad <~ 0;", "pad <~ 0; half <~ 4;");
        assert!(matches!(check_src(&src), Err(TypeError::InputReassigned(x)) if x == "half"));
    }

    #[test]
    fn rejects_read_before_assignment() {
        let src = "
            main {
                cnp even (pub half : Int; sec pad : Int) given (pub n : Int = 6) {
                    let h : Int@CP = !!half;
                    half <~ 3;
                    pad <~ 0;
                    h + h == n
                }
            }
        ";
        assert!(matches!(check_src(src), Err(TypeError::InputUnassigned(x)) if x == "half"));
    }

    #[test]
    fn rejects_missing_assignment() {
        let src = "
            main {
                cnp even (pub half : Int; sec pad : Int) given (pub n : Int = 6) {
                    half <~ 3;
                    let h : Int@CP = !!half;
                    h + h == n
                }
            }
        ";
        assert!(matches!(check_src(src), Err(TypeError::IncompleteInputs(v)) if v == vec!["pad".to_string()]));
    }

    #[test]
    fn rejects_branches_assigning_differently() {
        let src = "
            main {
                let flag : Bool = true;
                cnp even (pub half : Int; sec pad : Int) given (pub n : Int = 6) {
                    let u : Unit@CP = if flag { half <~ 3 } else { () };
                    pad <~ 0;
                    half <~ 3;
                    true
                }
            }
        ";
        let err = check_src(src);
        assert!(
            matches!(err, Err(TypeError::BranchAssignMismatch { .. })),
            "{err:?}"
        );
    }

    #[test]
    fn host_refs_stay_on_the_compute_side() {
        // A reference from the host context can be read inside the block at
        // the compute procedure but cannot feed a both-procedure let.
        let ok = "
            main {
                let r : Ref Int = ref 6;
                cnp even (pub half : Int; sec pad : Int) given () {
                    half <~ !r;
                    pad <~ 0;
                    let h : Int@CP = !!half;
                    let n : Int@C = !r;
                    true
                }
            }
        ";
        check_src(ok).unwrap();
        let bad = "
            main {
                let r : Ref Int = ref 6;
                cnp even (pub half : Int; sec pad : Int) given () {
                    half <~ 3;
                    pad <~ 0;
                    let n : Int@CP = !r;
                    true
                }
            }
        ";
        assert!(check_src(bad).is_err());
    }

    #[test]
    fn given_values_need_compute_availability() {
        let src = "
            main {
                let r : Ref Int = ref 6;
                cnp even (pub half : Int; sec pad : Int) given (pub n : Ref Int = r) {
                    half <~ 3;
                    pad <~ 0;
                    true
                }
            }
        ";
        assert!(matches!(check_src(src), Err(TypeError::RefReachable { .. })));
    }

    #[test]
    fn body_must_end_prove_capable() {
        let src = "
            main {
                cnp even (pub half : Int; sec pad : Int) given () {
                    half <~ 3;
                    pad <~ 0;
                    let r : Ref Int@C = ref@C 5;
                    !r == 5
                }
            }
        ";
        // The final comparison mentions a compute-only binding, so it cannot
        // be checked in the prove procedure.
        let err = check_src(src);
        assert!(matches!(err, Err(TypeError::LabeledMismatch { .. })), "{err:?}");
    }

    #[test]
    fn nested_blocks_check() {
        let src = "
            main {
                cnp outer (pub a : Int; sec b : Int) given () {
                    a <~ 1;
                    b <~ 2;
                    let p : ProofOf inner@C = cnp inner (pub c : Int; sec d : Int) given () {
                        c <~ 3;
                        d <~ 4;
                        let cc : Int@CP = !!c in
                        cc < 10
                    } in
                    let ok : Bool@C = verify p proves inner using (3) in
                    let aa : Int@CP = !!a in
                    let bb : Int@CP = !!b in
                    aa < bb
                }
            }
        ";
        let res = check_src(src);
        assert!(res.is_ok(), "{res:?}");
    }

    #[test]
    fn wrapped_locations_strip_to_their_side() {
        assert_eq!(unlift_value(&Value::LocC(3), Label::C, None), Some(Value::Loc(3)));
        assert_eq!(unlift_value(&Value::LocC(3), Label::P, None), None);
        let mut theta = BTreeMap::new();
        theta.insert((3, 4), -1);
        assert_eq!(
            unlift_value(&Value::LocCP(3, 4), Label::CP, Some(&theta)),
            Some(Value::Loc(-1))
        );
        assert_eq!(unlift_value(&Value::Loc(3), Label::C, None), None);
    }
}
