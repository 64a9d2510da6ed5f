//! Type checking for the target language: every judgment carries, besides a
//! type, the set of procedures the expression may run in. Checking is
//! downward closed in that set, so we synthesize the largest (principal)
//! label and compare against requirements. Allocation, proof generation, and
//! combined blocks pin their label to the compute procedure; conditionals and
//! lets intersect the labels of their parts.

use crate::classtable::ClassTable;
use crate::parser::is_temp;
use crate::syntax::*;
use std::collections::BTreeMap;
use thiserror::Error;

pub type Gamma = BTreeMap<Name, Type>;
pub type StoreTy = BTreeMap<Loc, Type>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("unbound variable '{0}'")]
    UnboundVar(Name),
    #[error("unknown class '{0}'")]
    UnknownClass(Name),
    #[error("unknown predicate '{0}'")]
    UnknownPredicate(Name),
    #[error("'Proof' values cannot be constructed directly")]
    ProofNotConstructible,
    #[error("class '{class}' has no field '{field}'")]
    UnknownField { class: Name, field: Name },
    #[error("no method '{method}' on class '{class}'")]
    UnknownMethod { class: Name, method: Name },
    #[error("location {0} is not in the store typing")]
    UnknownLocation(Loc),
    #[error("{what} expects {expected} arguments, got {found}")]
    ArityMismatch { what: String, expected: usize, found: usize },
    #[error("duplicate binder '{0}'")]
    DuplicateBinder(Name),
    #[error("expected {expected}, found {found} in {at}")]
    Mismatch { expected: Type, found: Type, at: String },
    #[error("expected a {expected} value, found type {found} in {at}")]
    ShapeMismatch { expected: &'static str, found: Type, at: String },
    #[error("{at} must be able to run in procedure {needed}, but is limited to {available}")]
    LabelUnavailable { needed: Label, available: Label, at: String },
    #[error("the parts of {at} share no procedure they can run in")]
    EmptyLabelMeet { at: String },
    #[error("type {ty} can reach a mutable reference, so it cannot cross into {at}")]
    RefReachable { ty: Type, at: String },
    #[error("computed-input form '{0}' used outside a combined block")]
    CombinedOnlyForm(String),
    #[error("runtime-only form '{0}' in source code")]
    RuntimeOnlyForm(String),
    #[error(
        "method '{method}' of '{class}' declares label {declared} but its body and class allow {available}"
    )]
    MethodLabel { class: Name, method: Name, declared: Label, available: Label },
    #[error("computed input '{0}' assigned twice")]
    InputReassigned(Name),
    #[error("computed input '{0}' read before assignment")]
    InputUnassigned(Name),
    #[error("'{0}' is not a declared computed input")]
    InputUndeclared(Name),
    #[error("branches assign different computed inputs: then {then_assigned:?}, else {else_assigned:?}")]
    BranchAssignMismatch { then_assigned: Vec<Name>, else_assigned: Vec<Name> },
    #[error("combined block finished without assigning computed inputs {0:?}")]
    IncompleteInputs(Vec<Name>),
    #[error("no procedure can type {at}")]
    NoLiftLabel { at: String },
    #[error("cannot project the {side} procedure of {at}: the guard is invisible there but the branches differ")]
    UnprojectableIf { side: Label, at: String },
    #[error("cannot use {found} where {expected} is needed in {at}")]
    LabeledMismatch { expected: String, found: String, at: String },
}

type Result<T> = std::result::Result<T, TypeError>;

pub struct Core<'a> {
    pub ct: &'a ClassTable,
}

impl<'a> Core<'a> {
    pub fn new(ct: &'a ClassTable) -> Core<'a> {
        Core { ct }
    }

    pub fn wf_type(&self, t: &Type) -> Result<()> {
        match t {
            Type::Unit | Type::Bool | Type::Int => Ok(()),
            Type::Ref(inner) => self.wf_type(inner),
            Type::Class(c) => {
                if self.ct.is_class(c) {
                    Ok(())
                } else {
                    Err(TypeError::UnknownClass(c.clone()))
                }
            }
            // A proof type may mention a predicate that no prove form defines;
            // such proofs can be passed around but never verified.
            Type::ProofOf(_) => Ok(()),
        }
    }

    fn expect_subtype(&self, found: &Type, want: &Type, at: impl Fn() -> String) -> Result<()> {
        if self.ct.subtype(found, want) {
            Ok(())
        } else {
            Err(TypeError::Mismatch { expected: want.clone(), found: found.clone(), at: at() })
        }
    }

    /// Principal type of a value.
    pub fn synth_value(&self, sig: &StoreTy, gam: &Gamma, v: &Value) -> Result<Type> {
        match v {
            Value::Var(x) => gam.get(x).cloned().ok_or_else(|| TypeError::UnboundVar(x.clone())),
            Value::Unit => Ok(Type::Unit),
            Value::Bool(_) => Ok(Type::Bool),
            Value::Int(_) => Ok(Type::Int),
            Value::Loc(l) => {
                let t = sig.get(l).ok_or(TypeError::UnknownLocation(*l))?;
                Ok(Type::reference(t.clone()))
            }
            Value::LocC(_) | Value::LocP(_) | Value::LocCP(..) => {
                Err(TypeError::RuntimeOnlyForm("procedure-wrapped location".into()))
            }
            Value::New(class, args) => {
                if class == PROOF {
                    return Err(TypeError::ProofNotConstructible);
                }
                let fields = self
                    .ct
                    .fields(class)
                    .ok_or_else(|| TypeError::UnknownClass(class.clone()))?;
                if fields.len() != args.len() {
                    return Err(TypeError::ArityMismatch {
                        what: format!("new {class}"),
                        expected: fields.len(),
                        found: args.len(),
                    });
                }
                for ((f, ft), a) in fields.iter().zip(args) {
                    self.check_value(sig, gam, a, ft)
                        .map_err(|e| contextualize(e, || format!("field '{f}' of new {class}")))?;
                }
                Ok(Type::Class(class.clone()))
            }
            Value::Proof { pred, publics } => {
                // Proof payloads are closed and location free, so they are
                // typed under empty contexts.
                let tys = self
                    .ct
                    .p_types(pred)
                    .ok_or_else(|| TypeError::UnknownPredicate(pred.clone()))?
                    .to_vec();
                if tys.len() != publics.len() {
                    return Err(TypeError::ArityMismatch {
                        what: format!("proof of {pred}"),
                        expected: tys.len(),
                        found: publics.len(),
                    });
                }
                let empty_sig = StoreTy::new();
                let empty_gam = Gamma::new();
                for (pv, pt) in publics.iter().zip(&tys) {
                    self.check_value(&empty_sig, &empty_gam, pv, pt)?;
                }
                Ok(Type::ProofOf(pred.clone()))
            }
        }
    }

    pub fn check_value(&self, sig: &StoreTy, gam: &Gamma, v: &Value, want: &Type) -> Result<()> {
        let found = self.synth_value(sig, gam, v)?;
        self.expect_subtype(&found, want, || format!("value {v}"))
    }

    fn synth_class_value(&self, sig: &StoreTy, gam: &Gamma, v: &Value) -> Result<Name> {
        match self.synth_value(sig, gam, v)? {
            Type::Class(c) => Ok(c),
            other => Err(TypeError::ShapeMismatch {
                expected: "class-typed",
                found: other,
                at: format!("{v}"),
            }),
        }
    }

    fn synth_ref_value(&self, sig: &StoreTy, gam: &Gamma, v: &Value) -> Result<Type> {
        match self.synth_value(sig, gam, v)? {
            Type::Ref(inner) => Ok(*inner),
            other => Err(TypeError::ShapeMismatch {
                expected: "reference",
                found: other,
                at: format!("{v}"),
            }),
        }
    }

    pub fn synth_expr(&self, sig: &StoreTy, gam: &Gamma, e: &Expr) -> Result<(Type, Label)> {
        self.expr_ty(sig, gam, e, None)
    }

    pub fn check_expr(&self, sig: &StoreTy, gam: &Gamma, e: &Expr, want: &Type) -> Result<Label> {
        let (_, l) = self.expr_ty(sig, gam, e, Some(want))?;
        Ok(l)
    }

    /// Synthesize type and principal label; when `want` is given, the
    /// expectation is pushed into branches and checked by subtyping at the
    /// leaves.
    fn expr_ty(&self, sig: &StoreTy, gam: &Gamma, e: &Expr, want: Option<&Type>) -> Result<(Type, Label)> {
        let finish = |found: Type, l: Label| -> Result<(Type, Label)> {
            if let Some(w) = want {
                self.expect_subtype(&found, w, || format!("{e}"))?;
                Ok((w.clone(), l))
            } else {
                Ok((found, l))
            }
        };
        match e {
            Expr::Val(v) => {
                let t = self.synth_value(sig, gam, v)?;
                finish(t, Label::CP)
            }
            Expr::Cast { class, value } => {
                if !self.ct.is_class(class) {
                    return Err(TypeError::UnknownClass(class.clone()));
                }
                // Even casts unrelated to the operand's type are accepted
                // statically; they fail at run time.
                self.synth_value(sig, gam, value)?;
                finish(Type::Class(class.clone()), Label::CP)
            }
            Expr::Field { value, field } => {
                let class = self.synth_class_value(sig, gam, value)?;
                let fields = self
                    .ct
                    .fields(&class)
                    .ok_or_else(|| TypeError::UnknownClass(class.clone()))?;
                let (_, ft) = fields
                    .iter()
                    .find(|(f, _)| f == field)
                    .ok_or_else(|| TypeError::UnknownField { class: class.clone(), field: field.clone() })?;
                finish(ft.clone(), Label::CP)
            }
            Expr::Call { recv, method, args } => {
                let class = self.synth_class_value(sig, gam, recv)?;
                let (params, label, ret) = self
                    .ct
                    .mtype(method, &class)
                    .ok_or_else(|| TypeError::UnknownMethod { class: class.clone(), method: method.clone() })?;
                if params.len() != args.len() {
                    return Err(TypeError::ArityMismatch {
                        what: format!("call to {method}"),
                        expected: params.len(),
                        found: args.len(),
                    });
                }
                for (a, pt) in args.iter().zip(&params) {
                    self.check_value(sig, gam, a, pt)
                        .map_err(|err| contextualize(err, || format!("argument of {method}")))?;
                }
                finish(ret, label)
            }
            Expr::Prim { op, args } => {
                if args.len() != 2 {
                    return Err(TypeError::ArityMismatch {
                        what: format!("operator {}", op.symbol()),
                        expected: 2,
                        found: args.len(),
                    });
                }
                for a in args {
                    self.check_value(sig, gam, a, &op.arg_type())?;
                }
                finish(op.result_type(), Label::CP)
            }
            Expr::Alloc { ty } => {
                self.wf_type(ty)?;
                finish(Type::reference(ty.clone()), Label::C)
            }
            Expr::Ref { value } => {
                let t = self.synth_value(sig, gam, value)?;
                finish(Type::reference(t), Label::CP)
            }
            Expr::Deref { value } => {
                let t = self.synth_ref_value(sig, gam, value)?;
                finish(t, Label::CP)
            }
            Expr::Assign { target, value } => {
                let t = self.synth_ref_value(sig, gam, target)?;
                self.check_value(sig, gam, value, &t)?;
                finish(Type::Unit, Label::CP)
            }
            Expr::If { guard, then_branch, else_branch } => {
                self.check_value(sig, gam, guard, &Type::Bool)?;
                let (t1, l1) = self.expr_ty(sig, gam, then_branch, want)?;
                let (t2, l2) = self.expr_ty(sig, gam, else_branch, want)?;
                let l = l1
                    .meet(l2)
                    .ok_or_else(|| TypeError::EmptyLabelMeet { at: "this conditional".into() })?;
                let t = if self.ct.subtype(&t1, &t2) {
                    t2
                } else if self.ct.subtype(&t2, &t1) {
                    t1
                } else {
                    return Err(TypeError::Mismatch {
                        expected: t1,
                        found: t2,
                        at: "conditional branches".into(),
                    });
                };
                Ok((t, l))
            }
            Expr::Let { var, ty, rhs, body } => {
                self.wf_type(ty)?;
                let l1 = self.check_expr(sig, gam, rhs, ty)?;
                let mut inner = gam.clone();
                inner.insert(var.clone(), ty.clone());
                let (t2, l2) = self.expr_ty(sig, &inner, body, want)?;
                let l = l1
                    .meet(l2)
                    .ok_or_else(|| TypeError::EmptyLabelMeet { at: format!("let {var}") })?;
                Ok((t2, l))
            }
            Expr::Prove(form) => {
                self.check_prove(sig, gam, form, |s, g, v, t| self.check_value(s, g, v, t))?;
                finish(Type::ProofOf(form.pred.clone()), Label::C)
            }
            Expr::Verify { proof, pred, publics } => {
                self.check_value(sig, gam, proof, &Type::Class(PROOF.into()))?;
                let tys = self
                    .ct
                    .p_types(pred)
                    .ok_or_else(|| TypeError::UnknownPredicate(pred.clone()))?
                    .to_vec();
                if tys.len() != publics.len() {
                    return Err(TypeError::ArityMismatch {
                        what: format!("verify of {pred}"),
                        expected: tys.len(),
                        found: publics.len(),
                    });
                }
                for (pv, pt) in publics.iter().zip(&tys) {
                    self.check_value(sig, gam, pv, pt)?;
                }
                finish(Type::Bool, Label::CP)
            }
            Expr::Cnp(block) => {
                crate::typing_combined::check_cnp_in_target(self, sig, gam, block)?;
                finish(Type::ProofOf(block.pred.clone()), Label::C)
            }
            Expr::CnpRun(_) => Err(TypeError::RuntimeOnlyForm("running combined block".into())),
            Expr::InputAssign { var, .. } => Err(TypeError::CombinedOnlyForm(format!("{var} <~"))),
            Expr::InputDeref { var } => Err(TypeError::CombinedOnlyForm(format!("!!{var}"))),
        }
    }

    /// Shared body/arg checks for prove forms; the argument checker differs
    /// between target and combined callers.
    pub fn check_prove<V>(
        &self,
        sig: &StoreTy,
        gam: &Gamma,
        form: &ProveForm<V>,
        check_arg: impl Fn(&StoreTy, &Gamma, &V, &Type) -> Result<()>,
    ) -> Result<()> {
        let mut body_gam = Gamma::new();
        for (x, t) in form.pub_binders.iter().chain(&form.sec_binders) {
            self.wf_type(t)?;
            if !self.ct.no_refs(t) {
                return Err(TypeError::RefReachable {
                    ty: t.clone(),
                    at: format!("predicate {}", form.pred),
                });
            }
            if body_gam.insert(x.clone(), t.clone()).is_some() {
                return Err(TypeError::DuplicateBinder(x.clone()));
            }
        }
        // The body runs inside the proof system: empty store, and it must be
        // able to execute in the prove procedure.
        let body_label = self.check_expr(&StoreTy::new(), &body_gam, &form.body, &Type::Bool)?;
        if !Label::P.subset_of(body_label) {
            return Err(TypeError::LabelUnavailable {
                needed: Label::P,
                available: body_label,
                at: format!("body of predicate {}", form.pred),
            });
        }
        if form.pub_args.len() != form.pub_binders.len() {
            return Err(TypeError::ArityMismatch {
                what: format!("public arguments of {}", form.pred),
                expected: form.pub_binders.len(),
                found: form.pub_args.len(),
            });
        }
        if form.sec_args.len() != form.sec_binders.len() {
            return Err(TypeError::ArityMismatch {
                what: format!("secret arguments of {}", form.pred),
                expected: form.sec_binders.len(),
                found: form.sec_args.len(),
            });
        }
        for (a, (_, t)) in form.pub_args.iter().zip(&form.pub_binders) {
            check_arg(sig, gam, a, t)?;
        }
        for (a, (_, t)) in form.sec_args.iter().zip(&form.sec_binders) {
            check_arg(sig, gam, a, t)?;
        }
        Ok(())
    }

    pub fn check_method(&self, class: &ClassDecl, m: &Method) -> Result<()> {
        let mut gam = Gamma::new();
        for (x, t) in &m.params {
            self.wf_type(t)?;
            gam.insert(x.clone(), t.clone());
        }
        gam.insert("this".into(), Type::Class(class.name.clone()));
        self.wf_type(&m.ret)?;
        let body_label = self
            .check_expr(&StoreTy::new(), &gam, &m.body, &m.ret)
            .map_err(|e| contextualize(e, || format!("method {}.{}", class.name, m.name)))?;
        let class_tag = self.ct.class_tag(&class.name).unwrap_or(Label::CP);
        match body_label.meet(class_tag) {
            Some(available) if m.label.subset_of(available) => Ok(()),
            available => Err(TypeError::MethodLabel {
                class: class.name.clone(),
                method: m.name.clone(),
                declared: m.label,
                available: available.unwrap_or(m.label),
            }),
        }
    }

    /// Check every method body and the main expression; returns main's type
    /// and principal label.
    pub fn check_program(&self, prog: &Program) -> Result<(Type, Label)> {
        for class in &prog.classes {
            for m in &class.methods {
                self.check_method(class, m)?;
            }
        }
        self.synth_expr(&StoreTy::new(), &Gamma::new(), &prog.main)
    }

    // -----------------------------------------------------------------------
    // Elaboration: fill in the placeholder types of `$t` binders introduced
    // by normalization. Runs before checking; the class table must be rebuilt
    // afterwards so method bodies seen by evaluation carry the real types.

    pub fn elaborate_program(&self, prog: &mut Program) -> Result<()> {
        for class in &mut prog.classes {
            let class_name = class.name.clone();
            for m in &mut class.methods {
                let mut gam = Gamma::new();
                for (x, t) in &m.params {
                    gam.insert(x.clone(), t.clone());
                }
                gam.insert("this".into(), Type::Class(class_name.clone()));
                self.elab_expr(&StoreTy::new(), &gam, &mut m.body)?;
            }
        }
        self.elab_expr(&StoreTy::new(), &Gamma::new(), &mut prog.main)
    }

    pub(crate) fn elab_expr(&self, sig: &StoreTy, gam: &Gamma, e: &mut Expr) -> Result<()> {
        match e {
            Expr::Let { var, ty, rhs, body } => {
                self.elab_expr(sig, gam, rhs)?;
                if is_temp(var) {
                    let (t, _) = self.synth_expr(sig, gam, rhs)?;
                    *ty = t;
                }
                let mut inner = gam.clone();
                inner.insert(var.clone(), ty.clone());
                self.elab_expr(sig, &inner, body)
            }
            Expr::If { then_branch, else_branch, .. } => {
                self.elab_expr(sig, gam, then_branch)?;
                self.elab_expr(sig, gam, else_branch)
            }
            Expr::Prove(form) => {
                let mut body_gam = Gamma::new();
                for (x, t) in form.pub_binders.iter().chain(&form.sec_binders) {
                    body_gam.insert(x.clone(), t.clone());
                }
                self.elab_expr(&StoreTy::new(), &body_gam, &mut form.body)
            }
            Expr::Cnp(block) => crate::typing_combined::elab_cnp(self, sig, gam, block),
            _ => Ok(()),
        }
    }
}

fn contextualize(e: TypeError, at: impl Fn() -> String) -> TypeError {
    match e {
        TypeError::Mismatch { expected, found, .. } => {
            TypeError::Mismatch { expected, found, at: at() }
        }
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_expr, parse_program};

    fn check_src(src: &str) -> Result<(Type, Label)> {
        let mut prog = parse_program(src).unwrap();
        let ct0 = ClassTable::build(&prog).unwrap();
        Core::new(&ct0).elaborate_program(&mut prog)?;
        let ct = ClassTable::build(&prog).unwrap();
        Core::new(&ct).check_program(&prog)
    }

    fn check_main(src: &str) -> Result<(Type, Label)> {
        check_src(&format!("main {{ {src} }}"))
    }

    #[test]
    fn literals_and_prims() {
        assert_eq!(check_main("1 + 2 * 3").unwrap(), (Type::Int, Label::CP));
        assert_eq!(check_main("1 < 2").unwrap(), (Type::Bool, Label::CP));
        assert!(matches!(check_main("1 + true"), Err(TypeError::Mismatch { .. })));
    }

    #[test]
    fn refs_are_compute_only_when_allocated_lazily() {
        let (t, l) = check_main("alloc Int").unwrap();
        assert_eq!(t, Type::reference(Type::Int));
        assert_eq!(l, Label::C);
        let (_, l) = check_main("let r : Ref Int = ref 5; r := 7; !r").unwrap();
        assert_eq!(l, Label::CP);
    }

    #[test]
    fn method_label_constrains_call_sites() {
        let src = "
            class A extends Object {
                f@P(x : Int) : Int { x + 1 }
            }
            main { let a : A = new A(); a.f(1) }
        ";
        let (_, l) = check_src(src).unwrap();
        assert_eq!(l, Label::P);
        // A compute-only expression sequenced with a prove-only call shares
        // no procedure.
        let src = "
            class A extends Object {
                f@P(x : Int) : Int { x + 1 }
            }
            main { let a : A = new A(); let r : Ref Int = alloc Int; a.f(1) }
        ";
        assert!(matches!(check_src(src), Err(TypeError::EmptyLabelMeet { .. })));
    }

    #[test]
    fn method_body_must_cover_declared_label() {
        let src = "
            class A extends Object {
                f@CP(x : Int) : Ref Int { ref x }
            }
            main { 0 }
        ";
        check_src(src).unwrap();
        let src = "
            class A extends Object {
                f@CP(x : Int) : Ref Int { alloc Int }
            }
            main { 0 }
        ";
        assert!(matches!(check_src(src), Err(TypeError::MethodLabel { .. })));
    }

    #[test]
    fn stupid_casts_pass_statically() {
        let src = "
            class A extends Object { }
            class B extends Object { }
            main { let a : A = new A(); (B) a }
        ";
        let (t, _) = check_src(src).unwrap();
        assert_eq!(t, Type::Class("B".into()));
    }

    #[test]
    fn prove_checks_body_at_prove_label() {
        let ok = "let p : ProofOf pos = prove pos = exists (x : Int)[w : Int]. { w < x } with (5)[2]; p";
        let (t, l) = check_main(ok).unwrap();
        assert_eq!(t, Type::ProofOf("pos".into()));
        assert_eq!(l, Label::C);
        // A predicate body that allocates can only run in compute.
        let bad = "prove pos = exists (x : Int)[w : Int]. { let r : Ref Int = alloc Int; w < x } with (5)[2]";
        assert!(matches!(check_main(bad), Err(TypeError::LabelUnavailable { .. })));
    }

    #[test]
    fn prove_rejects_ref_binders() {
        let bad = "let r : Ref Int = ref 1; prove pos = exists (x : Ref Int)[]. { true } with (r)[]";
        assert!(matches!(check_main(bad), Err(TypeError::RefReachable { .. })));
    }

    #[test]
    fn verify_checks_publics_against_predicate() {
        let ok = "
            let p : ProofOf pos = prove pos = exists (x : Int)[w : Int]. { w < x } with (5)[2];
            verify p proves pos using (5)
        ";
        // Proof generation pins the let chain to the compute procedure.
        assert_eq!(check_main(ok).unwrap(), (Type::Bool, Label::C));
        let bad = "
            let p : ProofOf pos = prove pos = exists (x : Int)[w : Int]. { w < x } with (5)[2];
            verify p proves pos using (true)
        ";
        assert!(matches!(check_main(bad), Err(TypeError::Mismatch { .. })));
    }

    #[test]
    fn new_checks_field_arity_and_subtyping() {
        let src = "
            class A extends Object { }
            class B extends A { }
            class Box extends Object { item : A; }
            main { new Box(new B()) }
        ";
        check_src(src).unwrap();
        let src = "
            class Box extends Object { item : Object; }
            main { new Box() }
        ";
        assert!(matches!(check_src(src), Err(TypeError::ArityMismatch { .. })));
    }

    #[test]
    fn input_forms_rejected_in_target_code() {
        let e = parse_expr("let x : Int = 1; x").unwrap();
        let prog = Program { classes: vec![], main: e };
        let ct = ClassTable::build(&prog).unwrap();
        let bad = Expr::InputDeref { var: "w".into() };
        assert!(matches!(
            Core::new(&ct).synth_expr(&StoreTy::new(), &Gamma::new(), &bad),
            Err(TypeError::CombinedOnlyForm(_))
        ));
    }

    #[test]
    fn elaboration_fills_temp_types() {
        let mut prog = parse_program("main { let x : Int = (1 + 2) * 3; x }").unwrap();
        let ct = ClassTable::build(&prog).unwrap();
        Core::new(&ct).elaborate_program(&mut prog).unwrap();
        // The hoisted addition sits in the let's right-hand side and must
        // have been given type Int.
        let Expr::Let { rhs, .. } = &prog.main else { panic!("{}", prog.main) };
        let Expr::Let { var, ty, .. } = rhs.as_ref() else { panic!("{rhs}") };
        assert!(is_temp(var), "{var}");
        assert_eq!(*ty, Type::Int);
    }

    #[test]
    fn branch_types_join_along_class_chain() {
        let src = "
            class A extends Object { }
            class B extends A { }
            class C extends A { }
            main {
                let flag : Bool = true;
                if flag { new B() } else { new C() }
            }
        ";
        // Neither branch subsumes the other; synthesis requires comparability.
        assert!(matches!(check_src(src), Err(TypeError::Mismatch { .. })));
        let src = "
            class A extends Object { }
            class B extends A { }
            main {
                let flag : Bool = true;
                let r : A = if flag { new B() } else { new A() };
                r
            }
        ";
        check_src(src).unwrap();
    }
}
