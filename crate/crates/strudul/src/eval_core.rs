//! The sequential target machine: small-step evaluation of target
//! expressions over a single mutable heap, with an observable trace of
//! allocations, writes, proof generations, and verifications.
//!
//! Combined blocks embedded in target code step through the in-order
//! combined machine in [`crate::eval_combined`]; the two steppers are
//! mutually recursive through the block-run rules. All stepping draws from
//! one shared fuel pool so nested premises (prove bodies, block internals)
//! cannot hide divergence.

use crate::classtable::ClassTable;
use crate::syntax::{
    Entry, Event, Expr, Loc, Name, PrimOp, Program, Store, Trace, Type, Value,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::mem;

/// Default step budget for one run, shared across nested premises.
pub const DEFAULT_FUEL: u64 = 100_000;

/// The step budget, honoring a `STRUDUL_FUEL` override.
pub fn fuel_from_env() -> u64 {
    std::env::var("STRUDUL_FUEL")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(DEFAULT_FUEL)
}

/// Why no rule applies to a non-value expression.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum StuckReason {
    /// A cast whose scrutinee is not an instance of the target class.
    BadCast { class: Name, value: String },
    NoSuchField { class: Name, field: Name },
    NoSuchMethod { class: Name, method: Name },
    /// Reading a reserved-but-unwritten cell.
    UninitDeref(Loc),
    /// A location outside the heap's domain.
    DanglingLoc(Loc),
    /// A prove whose body terminated in something other than True.
    ProveFalse(Name),
    /// A prove whose body itself got stuck.
    ProveStuck(Name, Box<StuckReason>),
    /// A block whose body finished False, so no proof can be produced.
    BlockFalse(Name),
    /// Writing a computed input that already holds a value.
    InputReassigned(Name),
    /// Reading a computed input before any write, or finishing a block with
    /// one never written.
    InputUnassigned(Name),
    /// A paired read whose two procedures disagree.
    JoinMismatch(String),
    /// Both procedures of a running block waiting on each other.
    Deadlock(Name),
    NoRule(String),
}

impl fmt::Display for StuckReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StuckReason::BadCast { class, value } => {
                write!(f, "cannot cast {value} to {class}")
            }
            StuckReason::NoSuchField { class, field } => {
                write!(f, "{class} has no field {field}")
            }
            StuckReason::NoSuchMethod { class, method } => {
                write!(f, "{class} has no method {method}")
            }
            StuckReason::UninitDeref(l) => write!(f, "read of uninitialized cell {l}"),
            StuckReason::DanglingLoc(l) => write!(f, "location {l} is not allocated"),
            StuckReason::ProveFalse(p) => write!(f, "predicate {p} did not hold"),
            StuckReason::ProveStuck(p, r) => write!(f, "predicate {p} got stuck: {r}"),
            StuckReason::BlockFalse(p) => write!(f, "block for {p} finished false"),
            StuckReason::InputReassigned(x) => write!(f, "computed input {x} written twice"),
            StuckReason::InputUnassigned(x) => write!(f, "computed input {x} never written"),
            StuckReason::JoinMismatch(s) => write!(f, "procedures disagree on {s}"),
            StuckReason::Deadlock(p) => {
                write!(f, "both procedures blocked in the block for {p}")
            }
            StuckReason::NoRule(s) => write!(f, "no rule for {s}"),
        }
    }
}

/// How a run ended. Fuel exhaustion anywhere, including inside a prove
/// premise, reports as `Diverged`; `Stuck` is a genuine missing rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Value(Value),
    Stuck(StuckReason),
    Diverged,
}

impl Outcome {
    pub fn as_value(&self) -> Option<&Value> {
        match self {
            Outcome::Value(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_stuck(&self) -> bool {
        matches!(self, Outcome::Stuck(_))
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Value(v) => write!(f, "value {v}"),
            Outcome::Stuck(r) => write!(f, "stuck: {r}"),
            Outcome::Diverged => write!(f, "diverged (fuel exhausted)"),
        }
    }
}

/// A finished run: its outcome, the events it emitted, how many steps it
/// took, and the heap it left behind.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub outcome: Outcome,
    pub trace: Trace,
    pub steps: u64,
    pub store: Store,
}

/// Abandons the current run: either no rule applies or a nested premise ran
/// out of fuel.
#[derive(Debug)]
pub(crate) enum Halt {
    Stuck(StuckReason),
    Fuel,
}

pub(crate) fn stuck<T>(reason: StuckReason) -> Result<T, Halt> {
    Err(Halt::Stuck(reason))
}

/// One step's result: the redex contracted to a value, or to a new state.
pub(crate) enum Step<E> {
    Value(Value),
    Next(E),
}

/// Shared stepping state: the class table, the fuel pool, a step counter,
/// and the trace accumulated so far.
pub struct Evaluator<'a> {
    ct: &'a ClassTable,
    pub fuel: u64,
    pub steps: u64,
    pub trace: Trace,
}

impl<'a> Evaluator<'a> {
    pub fn new(ct: &'a ClassTable) -> Evaluator<'a> {
        Evaluator::with_fuel(ct, fuel_from_env())
    }

    pub fn with_fuel(ct: &'a ClassTable, fuel: u64) -> Evaluator<'a> {
        Evaluator { ct, fuel, steps: 0, trace: Vec::new() }
    }

    pub(crate) fn ct(&self) -> &'a ClassTable {
        self.ct
    }

    pub(crate) fn emit(&mut self, event: Event) {
        self.trace.push(event);
    }

    /// Spend one unit of fuel; `false` means the pool is empty.
    pub(crate) fn charge(&mut self) -> bool {
        if self.fuel == 0 {
            return false;
        }
        self.fuel -= 1;
        self.steps += 1;
        true
    }

    /// Run target code to completion against `sigma`.
    pub fn run_target(&mut self, mut e: Expr, sigma: &mut Store) -> Outcome {
        loop {
            if let Expr::Val(v) = e {
                return Outcome::Value(v);
            }
            if !self.charge() {
                return Outcome::Diverged;
            }
            match self.step_target(e, sigma) {
                Ok(Step::Value(v)) => return Outcome::Value(v),
                Ok(Step::Next(e2)) => e = e2,
                Err(Halt::Stuck(r)) => return Outcome::Stuck(r),
                Err(Halt::Fuel) => return Outcome::Diverged,
            }
        }
    }

    /// Contract one target redex. The caller has already charged fuel and
    /// filtered out values.
    pub(crate) fn step_target(
        &mut self,
        e: Expr,
        sigma: &mut Store,
    ) -> Result<Step<Expr>, Halt> {
        match e {
            Expr::Val(v) => Ok(Step::Value(v)),
            Expr::Cast { class, value } => Ok(Step::Value(cast_value(self.ct, &class, value)?)),
            Expr::Field { value, field } => {
                Ok(Step::Value(field_value(self.ct, &value, &field)?))
            }
            Expr::Call { recv, method, args } => {
                let (map, body) = self.call_parts(&recv, &method, &args)?;
                Ok(Step::Next(body.subst(&map)))
            }
            Expr::Prim { op, args } => Ok(Step::Value(eval_prim(op, &args)?)),
            Expr::Alloc { .. } => {
                let loc = sigma.alloc(Entry::Bot);
                self.emit(Event::Alloc { loc, value: None });
                Ok(Step::Value(Value::Loc(loc)))
            }
            Expr::Ref { value } => {
                let loc = sigma.alloc(Entry::Val(value.clone()));
                self.emit(Event::Alloc { loc, value: Some(value) });
                Ok(Step::Value(Value::Loc(loc)))
            }
            Expr::Deref { value } => {
                let loc = expect_loc(&value)?;
                Ok(Step::Value(read_cell(sigma, loc)?))
            }
            Expr::Assign { target, value } => {
                let loc = expect_loc(&target)?;
                if !sigma.contains(loc) {
                    return stuck(StuckReason::DanglingLoc(loc));
                }
                sigma.set(loc, value.clone());
                self.emit(Event::Set { loc, value });
                Ok(Step::Value(Value::Unit))
            }
            Expr::If { guard, then_branch, else_branch } => match guard.as_bool() {
                Some(true) => Ok(Step::Next(*then_branch)),
                Some(false) => Ok(Step::Next(*else_branch)),
                None => stuck(StuckReason::NoRule(format!("if on non-boolean {guard}"))),
            },
            Expr::Let { var, ty, rhs, body } => {
                if let Expr::Val(v) = *rhs {
                    return Ok(Step::Next(body.subst1(&var, &v)));
                }
                match self.step_target(*rhs, sigma)? {
                    Step::Value(v) => Ok(Step::Next(body.subst1(&var, &v))),
                    Step::Next(r2) => Ok(Step::Next(Expr::Let {
                        var,
                        ty,
                        rhs: Box::new(r2),
                        body,
                    })),
                }
            }
            Expr::Prove(p) => {
                let v = self.run_prove(
                    &p.pred,
                    &p.pub_binders,
                    &p.sec_binders,
                    &p.body,
                    &p.pub_args,
                    &p.sec_args,
                )?;
                Ok(Step::Value(v))
            }
            Expr::Verify { proof, pred, publics } => {
                let (ok, offered) = match_proof(&proof, &pred, &publics)?;
                self.emit(Event::Verif { pred, publics: offered, ok });
                Ok(Step::Value(Value::Bool(ok)))
            }
            Expr::Cnp(block) => {
                let active = self.cnp_init(&block, sigma)?;
                Ok(Step::Next(Expr::CnpRun(active)))
            }
            Expr::CnpRun(active) => match self.step_block(active, sigma)? {
                Step::Value(v) => Ok(Step::Value(v)),
                Step::Next(a) => Ok(Step::Next(Expr::CnpRun(a))),
            },
            Expr::InputAssign { var, .. } | Expr::InputDeref { var } => stuck(
                StuckReason::NoRule(format!("input operation on {var} outside a block")),
            ),
        }
    }

    /// Look up a method body and the binding of its parameters and `this`.
    /// The caller applies the substitution, lifting the body first when the
    /// call sits at a combined or annotated level.
    pub(crate) fn call_parts(
        &self,
        recv: &Value,
        method: &Name,
        args: &[Value],
    ) -> Result<(BTreeMap<Name, Value>, &'a Expr), Halt> {
        let Value::New(class, _) = recv else {
            return stuck(StuckReason::NoRule(format!("call on non-object {recv}")));
        };
        let Some((params, body)) = self.ct.mbody(method, class) else {
            return stuck(StuckReason::NoSuchMethod {
                class: class.clone(),
                method: method.clone(),
            });
        };
        if params.len() != args.len() {
            return stuck(StuckReason::NoRule(format!(
                "{method} expects {} arguments, got {}",
                params.len(),
                args.len()
            )));
        }
        let mut map: BTreeMap<Name, Value> =
            params.into_iter().zip(args.iter().cloned()).collect();
        map.insert("this".into(), recv.clone());
        Ok((map, body))
    }

    /// The prove premise: run the predicate body against an empty heap on
    /// the bound arguments. The premise's own trace is discarded; only the
    /// generation event is observable.
    pub(crate) fn run_prove(
        &mut self,
        pred: &Name,
        pub_binders: &[(Name, Type)],
        sec_binders: &[(Name, Type)],
        body: &Expr,
        pub_args: &[Value],
        sec_args: &[Value],
    ) -> Result<Value, Halt> {
        if pub_binders.len() != pub_args.len() || sec_binders.len() != sec_args.len() {
            return stuck(StuckReason::NoRule(format!("argument arity for {pred}")));
        }
        let mut map = BTreeMap::new();
        for ((x, _), v) in pub_binders.iter().zip(pub_args) {
            map.insert(x.clone(), v.clone());
        }
        for ((y, _), w) in sec_binders.iter().zip(sec_args) {
            map.insert(y.clone(), w.clone());
        }
        let seeded = body.subst(&map);
        let saved = mem::take(&mut self.trace);
        let mut local = Store::new(0);
        let out = self.run_target(seeded, &mut local);
        self.trace = saved;
        match out {
            Outcome::Value(Value::Bool(true)) => {
                self.emit(Event::Gen {
                    pred: pred.clone(),
                    publics: pub_args.to_vec(),
                    secrets: sec_args.to_vec(),
                });
                Ok(Value::Proof { pred: pred.clone(), publics: pub_args.to_vec() })
            }
            Outcome::Value(Value::Bool(false)) => stuck(StuckReason::ProveFalse(pred.clone())),
            Outcome::Value(v) => stuck(StuckReason::ProveStuck(
                pred.clone(),
                Box::new(StuckReason::NoRule(format!("predicate body returned {v}"))),
            )),
            Outcome::Stuck(r) => stuck(StuckReason::ProveStuck(pred.clone(), Box::new(r))),
            Outcome::Diverged => Err(Halt::Fuel),
        }
    }

    /// Run a whole program's main expression on a fresh heap.
    pub fn run_program(ct: &'a ClassTable, prog: &Program, seed: Loc, fuel: u64) -> RunResult {
        let mut ev = Evaluator::with_fuel(ct, fuel);
        let mut sigma = Store::new(seed);
        let outcome = ev.run_target(prog.main.clone(), &mut sigma);
        RunResult { outcome, trace: ev.trace, steps: ev.steps, store: sigma }
    }
}

pub(crate) fn cast_value(ct: &ClassTable, class: &Name, value: Value) -> Result<Value, Halt> {
    let Value::New(d, _) = &value else {
        return stuck(StuckReason::NoRule(format!("cast of non-object {value}")));
    };
    if ct.subtype(&Type::Class(d.clone()), &Type::Class(class.clone())) {
        Ok(value)
    } else {
        stuck(StuckReason::BadCast { class: class.clone(), value: d.clone() })
    }
}

pub(crate) fn field_value(ct: &ClassTable, value: &Value, field: &Name) -> Result<Value, Halt> {
    let Value::New(class, args) = value else {
        return stuck(StuckReason::NoRule(format!("field access on {value}")));
    };
    let Some(fields) = ct.fields(class) else {
        return stuck(StuckReason::NoSuchField { class: class.clone(), field: field.clone() });
    };
    match fields.iter().position(|(f, _)| f == field) {
        Some(i) if i < args.len() => Ok(args[i].clone()),
        _ => stuck(StuckReason::NoSuchField { class: class.clone(), field: field.clone() }),
    }
}

pub(crate) fn eval_prim(op: PrimOp, args: &[Value]) -> Result<Value, Halt> {
    let [Value::Int(a), Value::Int(b)] = args else {
        return stuck(StuckReason::NoRule(format!(
            "{} on non-integer arguments",
            op.symbol()
        )));
    };
    Ok(match op {
        PrimOp::Add => Value::Int(a.wrapping_add(*b)),
        PrimOp::Sub => Value::Int(a.wrapping_sub(*b)),
        PrimOp::Mul => Value::Int(a.wrapping_mul(*b)),
        PrimOp::Eq => Value::Bool(a == b),
        PrimOp::Lt => Value::Bool(a < b),
    })
}

/// Compare an offered proof against the expected predicate and publics.
/// Returns the verdict and the publics the verification event reports: the
/// checked values on success, the offered ones on failure.
pub(crate) fn match_proof(
    proof: &Value,
    pred: &Name,
    publics: &[Value],
) -> Result<(bool, Vec<Value>), Halt> {
    let Value::Proof { pred: beta, publics: offered } = proof else {
        return stuck(StuckReason::NoRule(format!("verify of non-proof {proof}")));
    };
    let ok = beta == pred && offered == publics;
    Ok((ok, if ok { publics.to_vec() } else { offered.clone() }))
}

fn expect_loc(v: &Value) -> Result<Loc, Halt> {
    match v {
        Value::Loc(l) => Ok(*l),
        _ => stuck(StuckReason::NoRule(format!("heap access through {v}"))),
    }
}

pub(crate) fn read_cell(sigma: &Store, loc: Loc) -> Result<Value, Halt> {
    match sigma.get(loc) {
        Some(Entry::Val(v)) => Ok(v.clone()),
        Some(Entry::Bot) => stuck(StuckReason::UninitDeref(loc)),
        None => stuck(StuckReason::DanglingLoc(loc)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_program;
    use crate::typing_core::Core;

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

    #[test]
    fn arithmetic_and_lets() {
        let r = run("main { let x : Int = 1 + 2; x * 3 }");
        assert_eq!(r.outcome, Outcome::Value(Value::Int(9)));
        assert!(r.trace.is_empty());
        assert!(r.store.is_empty());
    }

    #[test]
    fn branching() {
        let r = run("main { let b : Bool = 2 < 1; if b { 1 } else { 2 } }");
        assert_eq!(r.outcome, Outcome::Value(Value::Int(2)));
    }

    #[test]
    fn refs_trace_allocs_and_writes() {
        let r = run("main { let c : Ref Int = ref 0; c := 1; !c }");
        assert_eq!(r.outcome, Outcome::Value(Value::Int(1)));
        assert_eq!(
            r.trace,
            vec![
                Event::Alloc { loc: 0, value: Some(Value::Int(0)) },
                Event::Set { loc: 0, value: Value::Int(1) },
            ]
        );
        assert_eq!(r.store.get(0), Some(&Entry::Val(Value::Int(1))));
    }

    #[test]
    fn repeat_accumulates() {
        let r = run("main { let c : Ref Int = ref 0; repeat 3 { c := !c + 1 }; assert(!c == 3); true }");
        assert_eq!(r.outcome, Outcome::Value(Value::Bool(true)));
        assert_eq!(r.trace.len(), 4); // one alloc, three writes
    }

    #[test]
    fn alloc_reserves_uninitialized() {
        let r = run("main { let c : Ref Int = alloc Int; !c }");
        assert_eq!(r.outcome, Outcome::Stuck(StuckReason::UninitDeref(0)));
        assert_eq!(r.trace, vec![Event::Alloc { loc: 0, value: None }]);
    }

    #[test]
    fn objects_fields_and_methods() {
        let r = run("
            class Pt extends Object {
                x : Int;
                y : Int;
                sum@CP() : Int { this.x + this.y }
            }
            main { let p : Pt = new Pt(1, 2); p.sum() }
        ");
        assert_eq!(r.outcome, Outcome::Value(Value::Int(3)));
    }

    #[test]
    fn downcast_of_plain_object_sticks() {
        let r = run("
            class Pt extends Object { x : Int; }
            main {
                let o : Object = new Object();
                let p : Pt = (Pt) o;
                p.x
            }
        ");
        assert_eq!(
            r.outcome,
            Outcome::Stuck(StuckReason::BadCast { class: "Pt".into(), value: "Object".into() })
        );
    }

    #[test]
    fn prove_then_verify_roundtrip() {
        let r = run("main {
            let p : ProofOf pos = prove pos = exists (x : Int)[w : Int]. { w < x } with (5)[2];
            verify p proves pos using (5)
        }");
        assert_eq!(r.outcome, Outcome::Value(Value::Bool(true)));
        assert_eq!(
            r.trace,
            vec![
                Event::Gen { pred: "pos".into(), publics: vec![Value::Int(5)], secrets: vec![Value::Int(2)] },
                Event::Verif { pred: "pos".into(), publics: vec![Value::Int(5)], ok: true },
            ]
        );
    }

    #[test]
    fn failed_verification_reports_the_offered_publics() {
        let r = run("main {
            let p : ProofOf pos = prove pos = exists (x : Int)[w : Int]. { w < x } with (5)[2];
            verify p proves pos using (6)
        }");
        assert_eq!(r.outcome, Outcome::Value(Value::Bool(false)));
        assert_eq!(
            r.trace.last(),
            Some(&Event::Verif { pred: "pos".into(), publics: vec![Value::Int(5)], ok: false })
        );
    }

    #[test]
    fn unsatisfied_predicate_sticks_without_a_trace() {
        let r = run("main {
            let p : ProofOf pos = prove pos = exists (x : Int)[w : Int]. { x < w } with (5)[2];
            p
        }");
        assert_eq!(r.outcome, Outcome::Stuck(StuckReason::ProveFalse("pos".into())));
        assert!(r.trace.is_empty());
    }

    #[test]
    fn predicate_body_events_are_discarded() {
        let r = run("main {
            let p : ProofOf writes = prove writes = exists (x : Int)[]. {
                let c : Ref Int = ref x;
                c := x + 1;
                !c == 8
            } with (7)[];
            verify p proves writes using (7)
        }");
        assert_eq!(r.outcome, Outcome::Value(Value::Bool(true)));
        assert_eq!(r.trace.len(), 2); // gen and verif only, no alloc or set
        assert!(r.store.is_empty());
    }

    #[test]
    fn recursion_exhausts_fuel() {
        let (ct, prog) = checked("
            class R extends Object { spin@CP() : Int { this.spin() } }
            main { let r : R = new R(); r.spin() }
        ");
        let r = Evaluator::run_program(&ct, &prog, 0, 50);
        assert_eq!(r.outcome, Outcome::Diverged);
    }

    #[test]
    fn divergence_inside_a_predicate_is_divergence() {
        let (ct, prog) = checked("
            class R extends Object { spin@CP() : Bool { this.spin() } }
            main {
                let p : ProofOf never = prove never = exists (x : Int)[]. {
                    let r : R = new R();
                    r.spin()
                } with (1)[];
                p
            }
        ");
        let r = Evaluator::run_program(&ct, &prog, 0, 50);
        assert_eq!(r.outcome, Outcome::Diverged);
    }

    #[test]
    fn input_forms_have_no_target_rule() {
        let prog = Program {
            classes: vec![],
            main: Expr::InputDeref { var: "x".into() },
        };
        let ct = ClassTable::build(&prog).expect("classtable");
        let r = Evaluator::run_program(&ct, &prog, 0, 10);
        assert!(matches!(r.outcome, Outcome::Stuck(StuckReason::NoRule(_))));
    }

    #[test]
    fn store_seed_offsets_locations() {
        let (ct, prog) = checked("main { let c : Ref Int = ref 4; !c }");
        let r = Evaluator::run_program(&ct, &prog, 10, DEFAULT_FUEL);
        assert_eq!(r.trace, vec![Event::Alloc { loc: 10, value: Some(Value::Int(4)) }]);
    }
}
