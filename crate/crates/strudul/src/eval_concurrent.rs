//! The two-procedure concurrent machine: the compute and prover projections
//! of a block body run side by side, each against its own heap, sharing only
//! the computed-input log. The compute side writes an input once; the prover
//! side blocks on a read until the value arrives. Only compute-side steps
//! and input writes are observable; everything the prover does is silent.
//!
//! Interleaving is simulated under a replayable scheduler, and every run
//! records which side performed each step so harnesses can reorder and
//! replay interleavings.

use crate::classtable::ClassTable;
use crate::eval_core::{stuck, Evaluator, Halt, Outcome, RunResult, Step, StuckReason};
use crate::projection::{annotate_block_body, project_ann};
use crate::syntax::{
    AnnValue, CnpBlock, Entry, Event, Expr, Label, Loc, Name, Program, Store, Value,
};
use crate::typing_core::{Core, Gamma, StoreTy};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// Which procedure takes the next step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    C,
    P,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::C => Side::P,
            Side::P => Side::C,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::C => write!(f, "compute"),
            Side::P => write!(f, "prove"),
        }
    }
}

/// An interleaving policy. All three are total: a preferred side that cannot
/// step yields to the other, so a schedule never wedges a run that some
/// interleaving could finish.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Schedule {
    /// Run the compute side to its value, then the prover. This is the
    /// canonical order every other interleaving is compared against.
    ComputeFirst,
    /// Flip a seeded coin per step. Same seed, same interleaving.
    Seeded(u64),
    /// Replay a recorded side sequence, falling back to compute-first when
    /// the sequence runs out.
    Explicit(Vec<Side>),
}

/// A schedule being consumed: hands out side preferences and records the
/// sides that actually stepped.
pub struct Scheduler {
    schedule: Schedule,
    rng: Option<StdRng>,
    cursor: usize,
    /// One entry per fired step, in order.
    pub recorded: Vec<Side>,
}

impl Scheduler {
    pub fn new(schedule: Schedule) -> Scheduler {
        let rng = match &schedule {
            Schedule::Seeded(seed) => Some(StdRng::seed_from_u64(*seed)),
            _ => None,
        };
        Scheduler { schedule, rng, cursor: 0, recorded: Vec::new() }
    }

    fn prefer(&mut self) -> Side {
        match (&self.schedule, &mut self.rng) {
            (Schedule::ComputeFirst, _) => Side::C,
            (Schedule::Seeded(_), Some(rng)) => {
                if rng.gen::<bool>() {
                    Side::C
                } else {
                    Side::P
                }
            }
            (Schedule::Seeded(_), None) => unreachable!("seeded scheduler carries its rng"),
            (Schedule::Explicit(sides), _) => {
                let side = sides.get(self.cursor).copied().unwrap_or(Side::C);
                self.cursor += 1;
                side
            }
        }
    }

    fn took(&mut self, side: Side) {
        self.recorded.push(side);
    }
}

/// The paired state: each projection with its own heap, plus the shared
/// computed-input log, which only the compute side may write.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConcurrentConfig {
    pub e_c: Expr,
    pub e_p: Expr,
    pub sigma_c: Store,
    pub sigma_p: Store,
    pub rho: BTreeMap<Name, Value>,
}

impl ConcurrentConfig {
    pub fn new(e_c: Expr, e_p: Expr, sigma_c: Store) -> ConcurrentConfig {
        ConcurrentConfig { e_c, e_p, sigma_c, sigma_p: Store::new(0), rho: BTreeMap::new() }
    }

    fn side_done(&self, side: Side) -> bool {
        match side {
            Side::C => matches!(self.e_c, Expr::Val(_)),
            Side::P => matches!(self.e_p, Expr::Val(_)),
        }
    }
}

/// What one offered step did.
#[derive(Debug)]
pub enum ConcStep {
    /// The side fired one step; any observable events are in the trace.
    Progress,
    /// The side is waiting on an unwritten computed input. Costs no fuel.
    Blocked,
    /// The side is already a value.
    Done,
    Stuck(StuckReason),
    Fuel,
}

/// How a paired run ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PairOutcome {
    Finished { v_c: Value, v_p: Value },
    Stuck { side: Side, reason: StuckReason },
    /// Neither side can move and at least one is not a value.
    Deadlock,
    Diverged,
}

/// A finished paired run: its ending, both heaps, the input log, and the
/// interleaving that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairResult {
    pub outcome: PairOutcome,
    pub sigma_p: Store,
    pub rho: BTreeMap<Name, Value>,
    pub sides: Vec<Side>,
}

enum SideHalt {
    Stuck(StuckReason),
    Fuel,
    Blocked,
}

/// One step of either projection: the computed-input forms work the shared
/// log, lets pass congruently, and every other form is an ordinary target
/// step against that side's heap.
fn step_side(
    ev: &mut Evaluator<'_>,
    e: Expr,
    sigma: &mut Store,
    rho: &mut BTreeMap<Name, Value>,
    side: Side,
) -> Result<Step<Expr>, SideHalt> {
    match e {
        Expr::InputAssign { var, value } => {
            if side == Side::P {
                return Err(SideHalt::Stuck(StuckReason::NoRule(format!(
                    "the prover cannot write computed input {var}"
                ))));
            }
            if rho.contains_key(&var) {
                return Err(SideHalt::Stuck(StuckReason::InputReassigned(var)));
            }
            ev.emit(Event::SetInput { var: var.clone(), value: value.clone() });
            rho.insert(var, value);
            Ok(Step::Value(Value::Unit))
        }
        Expr::InputDeref { var } => match rho.get(&var) {
            Some(v) => Ok(Step::Value(v.clone())),
            None => Err(SideHalt::Blocked),
        },
        Expr::Let { var, ty, rhs, body } => {
            if let Expr::Val(v) = *rhs {
                return Ok(Step::Next(body.subst1(&var, &v)));
            }
            match step_side(ev, *rhs, sigma, rho, side)? {
                Step::Value(v) => Ok(Step::Next(body.subst1(&var, &v))),
                Step::Next(r2) => {
                    Ok(Step::Next(Expr::Let { var, ty, rhs: Box::new(r2), body }))
                }
            }
        }
        other => ev.step_target(other, sigma).map_err(|h| match h {
            Halt::Stuck(r) => SideHalt::Stuck(r),
            Halt::Fuel => SideHalt::Fuel,
        }),
    }
}

impl<'a> Evaluator<'a> {
    /// Offer one step to `side`. Fuel is spent only when the step fires;
    /// a blocked offer is free. Prover-side events are discarded.
    pub fn step_concurrent(&mut self, cfg: &mut ConcurrentConfig, side: Side) -> ConcStep {
        if cfg.side_done(side) {
            return ConcStep::Done;
        }
        if !self.charge() {
            return ConcStep::Fuel;
        }
        let before = self.trace.len();
        let e = match side {
            Side::C => std::mem::replace(&mut cfg.e_c, Expr::Val(Value::Unit)),
            Side::P => std::mem::replace(&mut cfg.e_p, Expr::Val(Value::Unit)),
        };
        let sigma = match side {
            Side::C => &mut cfg.sigma_c,
            Side::P => &mut cfg.sigma_p,
        };
        let res = step_side(self, e, sigma, &mut cfg.rho, side);
        if side == Side::P {
            self.trace.truncate(before);
        }
        match res {
            Ok(step) => {
                let e2 = match step {
                    Step::Value(v) => Expr::Val(v),
                    Step::Next(e2) => e2,
                };
                match side {
                    Side::C => cfg.e_c = e2,
                    Side::P => cfg.e_p = e2,
                }
                ConcStep::Progress
            }
            Err(SideHalt::Blocked) => {
                // Nothing moved; give the charge back.
                self.fuel += 1;
                self.steps -= 1;
                ConcStep::Blocked
            }
            Err(SideHalt::Stuck(r)) => ConcStep::Stuck(r),
            Err(SideHalt::Fuel) => ConcStep::Fuel,
        }
    }

    /// Drive a paired configuration to rest under a schedule. A side that is
    /// done or blocked yields to the other; when neither can move and they
    /// are not both values, the pair is deadlocked.
    pub fn run_pair(
        &mut self,
        mut cfg: ConcurrentConfig,
        sched: &mut Scheduler,
    ) -> (PairResult, Store) {
        let outcome = loop {
            if cfg.side_done(Side::C) && cfg.side_done(Side::P) {
                let (Expr::Val(v_c), Expr::Val(v_p)) = (&cfg.e_c, &cfg.e_p) else {
                    unreachable!("both sides are values")
                };
                break PairOutcome::Finished { v_c: v_c.clone(), v_p: v_p.clone() };
            }
            let first = sched.prefer();
            match self.step_concurrent(&mut cfg, first) {
                ConcStep::Progress => {
                    sched.took(first);
                    continue;
                }
                ConcStep::Stuck(reason) => break PairOutcome::Stuck { side: first, reason },
                ConcStep::Fuel => break PairOutcome::Diverged,
                ConcStep::Done | ConcStep::Blocked => {}
            }
            let second = first.other();
            match self.step_concurrent(&mut cfg, second) {
                ConcStep::Progress => {
                    sched.took(second);
                    continue;
                }
                ConcStep::Stuck(reason) => break PairOutcome::Stuck { side: second, reason },
                ConcStep::Fuel => break PairOutcome::Diverged,
                ConcStep::Done | ConcStep::Blocked => break PairOutcome::Deadlock,
            }
        };
        (
            PairResult {
                outcome,
                sigma_p: cfg.sigma_p,
                rho: cfg.rho,
                sides: sched.recorded.clone(),
            },
            cfg.sigma_c,
        )
    }
}

/// Split a block into its two procedures: annotate the body, bind the given
/// values, and project each side. The compute side keeps input writes and
/// all compute-placed state; the prover side keeps its own state and reads
/// inputs from the shared log.
pub fn split_block(ct: &ClassTable, block: &CnpBlock) -> Result<(Expr, Expr), StuckReason> {
    let core = Core::new(ct);
    let bad = |err: &dyn fmt::Display| {
        StuckReason::NoRule(format!("block for {} does not split: {err}", block.pred))
    };
    let ann = annotate_block_body(&core, &StoreTy::new(), &Gamma::new(), block)
        .map_err(|e| bad(&e))?;
    let mut map = BTreeMap::new();
    for (y, _, v) in block.pub_given.iter().chain(&block.sec_given) {
        map.insert(y.clone(), AnnValue::lift(v, Label::CP));
    }
    let ann = ann.subst(&map);
    let e_c = project_ann(&ann, Label::C).map_err(|e| bad(&e))?;
    let e_p = project_ann(&ann, Label::P).map_err(|e| bad(&e))?;
    Ok((e_c, e_p))
}

impl<'a> Evaluator<'a> {
    /// Enter a block concurrently: reserve the input cells, split the body,
    /// run the pair under the schedule, and commit like the in-order rule.
    /// Input-write events inside the pair are renamed to their cells, so a
    /// concurrent run and an in-order run leave the same trace language.
    fn spawn_block(
        &mut self,
        block: &CnpBlock,
        sigma: &mut Store,
        sched: &mut Scheduler,
    ) -> Result<Value, Halt> {
        for (y, _, v) in block.pub_given.iter().chain(&block.sec_given) {
            if !v.closed() || !v.loc_free() {
                return stuck(StuckReason::NoRule(format!(
                    "block binding {y} is not a first-order value: {v}"
                )));
            }
        }
        let mut phi = BTreeMap::new();
        for (x, _) in block.pub_inputs.iter().chain(&block.sec_inputs) {
            let loc = sigma.alloc(Entry::Bot);
            self.emit(Event::Alloc { loc, value: None });
            phi.insert(x.clone(), loc);
        }
        let (e_c, e_p) = split_block(self.ct(), block).map_err(Halt::Stuck)?;
        let cfg = ConcurrentConfig {
            e_c,
            e_p,
            sigma_c: std::mem::replace(sigma, Store::new(0)),
            sigma_p: Store::new(0),
            rho: BTreeMap::new(),
        };
        let before = self.trace.len();
        let (pair, sigma_c) = self.run_pair(cfg, sched);
        *sigma = sigma_c;
        for ev in &mut self.trace[before..] {
            *ev = ev.project_inputs(&phi);
        }
        match pair.outcome {
            PairOutcome::Finished { v_p: Value::Bool(true), .. } => {
                let mut publics: Vec<Value> =
                    block.pub_given.iter().map(|(_, _, v)| v.clone()).collect();
                let mut secrets: Vec<Value> =
                    block.sec_given.iter().map(|(_, _, v)| v.clone()).collect();
                for (bucket, inputs) in
                    [(&mut publics, &block.pub_inputs), (&mut secrets, &block.sec_inputs)]
                {
                    for (x, _) in inputs {
                        let Some(v) = pair.rho.get(x) else {
                            return stuck(StuckReason::InputUnassigned(x.clone()));
                        };
                        sigma.set(phi[x], v.clone());
                        bucket.push(v.clone());
                    }
                }
                self.emit(Event::Gen {
                    pred: block.pred.clone(),
                    publics: publics.clone(),
                    secrets,
                });
                Ok(Value::Proof { pred: block.pred.clone(), publics })
            }
            PairOutcome::Finished { v_p: Value::Bool(false), .. } => {
                stuck(StuckReason::BlockFalse(block.pred.clone()))
            }
            PairOutcome::Finished { v_p, .. } => stuck(StuckReason::NoRule(format!(
                "block for {} finished with {v_p}",
                block.pred
            ))),
            PairOutcome::Stuck { reason, .. } => stuck(reason),
            PairOutcome::Deadlock => stuck(StuckReason::Deadlock(block.pred.clone())),
            PairOutcome::Diverged => Err(Halt::Fuel),
        }
    }

    /// One host step: host code is ordinary target code, except that a block
    /// at redex position runs as a concurrent pair instead of in order.
    fn step_host(
        &mut self,
        e: Expr,
        sigma: &mut Store,
        sched: &mut Scheduler,
    ) -> Result<Step<Expr>, Halt> {
        match e {
            Expr::Cnp(block) => Ok(Step::Value(self.spawn_block(&block, sigma, sched)?)),
            Expr::Let { var, ty, rhs, body } => {
                if let Expr::Val(v) = *rhs {
                    return Ok(Step::Next(body.subst1(&var, &v)));
                }
                match self.step_host(*rhs, sigma, sched)? {
                    Step::Value(v) => Ok(Step::Next(body.subst1(&var, &v))),
                    Step::Next(r2) => {
                        Ok(Step::Next(Expr::Let { var, ty, rhs: Box::new(r2), body }))
                    }
                }
            }
            other => self.step_target(other, sigma),
        }
    }

    /// Run a whole program with every block executed concurrently under the
    /// schedule. Everything else matches the sequential run, so on adequate
    /// programs the result and trace agree with the in-order semantics.
    pub fn run_program_concurrent(
        ct: &'a ClassTable,
        prog: &Program,
        seed: Loc,
        fuel: u64,
        sched: &mut Scheduler,
    ) -> RunResult {
        let mut ev = Evaluator::with_fuel(ct, fuel);
        let mut sigma = Store::new(seed);
        let mut e = prog.main.clone();
        let outcome = loop {
            if let Expr::Val(v) = e {
                break Outcome::Value(v);
            }
            if !ev.charge() {
                break Outcome::Diverged;
            }
            match ev.step_host(e, &mut sigma, sched) {
                Ok(Step::Value(v)) => break Outcome::Value(v),
                Ok(Step::Next(e2)) => e = e2,
                Err(Halt::Stuck(r)) => break Outcome::Stuck(r),
                Err(Halt::Fuel) => break Outcome::Diverged,
            }
        };
        RunResult { outcome, trace: ev.trace, steps: ev.steps, store: sigma }
    }
}
