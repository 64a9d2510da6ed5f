//! Class table construction and the static facts every later stage leans on:
//! field/method lookup, subtyping, predicate signatures, and the
//! ref-reachability analysis that decides which types may cross into proof
//! predicates.

use crate::syntax::*;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClassError {
    #[error("class {0} is declared twice")]
    DuplicateClass(Name),
    #[error("class name {0} is reserved")]
    ReservedClass(Name),
    #[error("class {0} extends undeclared class {1}")]
    UnknownParent(Name, Name),
    #[error("inheritance cycle through class {0}")]
    InheritanceCycle(Name),
    #[error("class {0} redeclares field {1}")]
    DuplicateField(Name, Name),
    #[error("class {0} declares method {1} twice")]
    DuplicateMethod(Name, Name),
    #[error("method {1} of class {0} repeats parameter {2}")]
    DuplicateParam(Name, Name, Name),
    #[error("method {1} of class {0} overrides {2}.{1} with a different signature")]
    BadOverride(Name, Name, Name),
    #[error("class {0} holds references so it must be tagged @C, not @{1}")]
    RefClassNotCompute(Name, Label),
    #[error("class {0} is tagged @{1} but its awareness works out to @{2}")]
    AwarenessMismatch(Name, Label, Label),
    #[error("class {0} holds references so its parent {1} must be tagged @C")]
    RefClassParentNotCompute(Name, Name),
    #[error("reference to undeclared class {0}")]
    UnknownClass(Name),
    #[error("predicate {0} is declared with conflicting public input types")]
    PredicateMismatch(Name),
}

/// The checked class table plus derived static facts.
#[derive(Debug, Clone)]
pub struct ClassTable {
    classes: BTreeMap<Name, ClassDecl>,
    /// Resolved context-awareness tag for every class, including the
    /// built-ins Object and Proof.
    tags: BTreeMap<Name, Label>,
    /// Predicates whose public inputs reach a reference type.
    aware_preds: BTreeSet<Name>,
    p_types: BTreeMap<Name, Vec<Type>>,
}

impl ClassTable {
    /// Builds and structurally checks the table: inheritance shape, field and
    /// method well-formedness, override compatibility, awareness tags, class
    /// references, and predicate signature consistency. Typing of method
    /// bodies happens later, in the expression type checkers.
    pub fn build(program: &Program) -> Result<ClassTable, ClassError> {
        let mut classes = BTreeMap::new();
        for decl in &program.classes {
            if decl.name == OBJECT || decl.name == PROOF {
                return Err(ClassError::ReservedClass(decl.name.clone()));
            }
            if classes.insert(decl.name.clone(), decl.clone()).is_some() {
                return Err(ClassError::DuplicateClass(decl.name.clone()));
            }
        }

        for decl in classes.values() {
            if decl.parent != OBJECT && decl.parent != PROOF && !classes.contains_key(&decl.parent)
            {
                return Err(ClassError::UnknownParent(decl.name.clone(), decl.parent.clone()));
            }
        }

        // Walk each chain to Object, watching for cycles.
        for name in classes.keys() {
            let mut seen = BTreeSet::new();
            let mut cur = name.clone();
            while let Some(decl) = classes.get(&cur) {
                if !seen.insert(cur.clone()) {
                    return Err(ClassError::InheritanceCycle(name.clone()));
                }
                cur = decl.parent.clone();
            }
        }

        let mut table = ClassTable {
            classes,
            tags: BTreeMap::new(),
            aware_preds: BTreeSet::new(),
            p_types: BTreeMap::new(),
        };

        table.check_members()?;
        table.collect_predicates(program)?;
        table.resolve_awareness()?;
        table.check_references(program)?;
        Ok(table)
    }

    fn check_members(&self) -> Result<(), ClassError> {
        for decl in self.classes.values() {
            let mut inherited: BTreeSet<&Name> = BTreeSet::new();
            let mut cur = &decl.parent;
            while let Some(parent) = self.classes.get(cur) {
                inherited.extend(parent.fields.iter().map(|(f, _)| f));
                cur = &parent.parent;
            }
            let mut own = BTreeSet::new();
            for (f, _) in &decl.fields {
                if inherited.contains(f) || !own.insert(f) {
                    return Err(ClassError::DuplicateField(decl.name.clone(), f.clone()));
                }
            }

            let mut methods = BTreeSet::new();
            for m in &decl.methods {
                if !methods.insert(&m.name) {
                    return Err(ClassError::DuplicateMethod(decl.name.clone(), m.name.clone()));
                }
                let mut params = BTreeSet::new();
                for (x, _) in &m.params {
                    if !params.insert(x) {
                        return Err(ClassError::DuplicateParam(
                            decl.name.clone(),
                            m.name.clone(),
                            x.clone(),
                        ));
                    }
                }
                // Overriding requires the identical signature, label included.
                if let Some((owner, parent_m)) = self.lookup_method(&decl.parent, &m.name) {
                    let same = parent_m.label == m.label
                        && parent_m.ret == m.ret
                        && parent_m.params.len() == m.params.len()
                        && parent_m
                            .params
                            .iter()
                            .zip(&m.params)
                            .all(|((_, a), (_, b))| a == b);
                    if !same {
                        return Err(ClassError::BadOverride(
                            decl.name.clone(),
                            m.name.clone(),
                            owner,
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    fn lookup_method(&self, class: &str, method: &str) -> Option<(Name, &Method)> {
        let mut cur = class;
        while let Some(decl) = self.classes.get(cur) {
            if let Some(m) = decl.methods.iter().find(|m| m.name == method) {
                return Some((decl.name.clone(), m));
            }
            cur = &decl.parent;
        }
        None
    }

    /// Gathers the public-input signature of every predicate defined by a
    /// prove form or a combined block anywhere in the program. For blocks the
    /// publics are the explicit bindings followed by the computed inputs,
    /// matching the order proofs carry them at run time.
    fn collect_predicates(&mut self, program: &Program) -> Result<(), ClassError> {
        let mut sigs: BTreeMap<Name, Vec<Type>> = BTreeMap::new();
        let mut record = |pred: &Name, sig: Vec<Type>| -> Result<(), ClassError> {
            match sigs.get(pred) {
                Some(existing) if *existing != sig => {
                    Err(ClassError::PredicateMismatch(pred.clone()))
                }
                Some(_) => Ok(()),
                None => {
                    sigs.insert(pred.clone(), sig);
                    Ok(())
                }
            }
        };
        let mut stack: Vec<ExprRef> = vec![ExprRef::Core(&program.main)];
        for decl in &program.classes {
            for m in &decl.methods {
                stack.push(ExprRef::Core(&m.body));
            }
        }
        while let Some(item) = stack.pop() {
            match item {
                ExprRef::Core(e) => walk_core(e, &mut stack, &mut record)?,
                ExprRef::Comb(e) => walk_comb(e, &mut stack, &mut record)?,
            }
        }
        self.p_types = sigs;
        Ok(())
    }

    /// Fixpoint over classes, predicates, and the built-ins: a class is
    /// context-aware when any value that could inhabit it can reach a
    /// reference, which includes values of any subclass.
    fn resolve_awareness(&mut self) -> Result<(), ClassError> {
        let names: Vec<Name> = self.classes.keys().cloned().collect();
        let mut aware_classes: BTreeSet<Name> = BTreeSet::new();
        let mut aware_preds: BTreeSet<Name> = BTreeSet::new();
        let mut aware_object = false;
        let mut aware_proof = false;

        loop {
            let mut changed = false;
            let reaches = |t: &Type,
                           classes: &BTreeSet<Name>,
                           preds: &BTreeSet<Name>,
                           object: bool,
                           proof: bool| {
                type_reaches_ref(t, classes, preds, object, proof)
            };
            for name in &names {
                if aware_classes.contains(name) {
                    continue;
                }
                // Fields of this class and of every descendant.
                let mut hit = false;
                for other in self.classes.values() {
                    if !self.class_descends(&other.name, name) {
                        continue;
                    }
                    for (_, t) in &other.fields {
                        if reaches(t, &aware_classes, &aware_preds, aware_object, aware_proof) {
                            hit = true;
                        }
                    }
                }
                if hit {
                    aware_classes.insert(name.clone());
                    changed = true;
                }
            }
            for (pred, sig) in &self.p_types {
                if aware_preds.contains(pred) {
                    continue;
                }
                if sig
                    .iter()
                    .any(|t| reaches(t, &aware_classes, &aware_preds, aware_object, aware_proof))
                {
                    aware_preds.insert(pred.clone());
                    changed = true;
                }
            }
            if !aware_proof && !aware_preds.is_empty() {
                aware_proof = true;
                changed = true;
            }
            if !aware_object && (!aware_classes.is_empty() || aware_proof) {
                aware_object = true;
                changed = true;
            }
            if !changed {
                break;
            }
        }

        let mut tags = BTreeMap::new();
        tags.insert(OBJECT.to_string(), if aware_object { Label::C } else { Label::CP });
        tags.insert(PROOF.to_string(), if aware_proof { Label::C } else { Label::CP });
        for name in &names {
            let inferred = if aware_classes.contains(name) { Label::C } else { Label::CP };
            let decl = &self.classes[name];
            if let Some(declared) = decl.aware {
                if declared != inferred {
                    return Err(ClassError::AwarenessMismatch(name.clone(), declared, inferred));
                }
            }
            tags.insert(name.clone(), inferred);
        }

        // The labeled class rules: a class whose own or inherited fields hold
        // references must sit on an all-compute chain.
        for name in &names {
            let decl = &self.classes[name];
            let own_refs = self
                .fields_unchecked(name)
                .iter()
                .any(|(_, t)| type_reaches_ref(t, &aware_classes, &aware_preds, aware_object, aware_proof));
            if own_refs {
                if tags[name] != Label::C {
                    return Err(ClassError::RefClassNotCompute(name.clone(), tags[name]));
                }
                let parent_tag = tags.get(&decl.parent).copied().unwrap_or(Label::CP);
                if parent_tag != Label::C {
                    return Err(ClassError::RefClassParentNotCompute(
                        name.clone(),
                        decl.parent.clone(),
                    ));
                }
            } else {
                let parent_tag = tags.get(&decl.parent).copied().unwrap_or(Label::CP);
                if !parent_tag.subset_of(tags[name]) {
                    return Err(ClassError::AwarenessMismatch(
                        name.clone(),
                        tags[name],
                        parent_tag,
                    ));
                }
            }
        }

        self.tags = tags;
        self.aware_preds = aware_preds;
        Ok(())
    }

    fn check_references(&self, program: &Program) -> Result<(), ClassError> {
        let mut referenced: BTreeSet<Name> = BTreeSet::new();
        let mut stack: Vec<ExprRef> = vec![ExprRef::Core(&program.main)];
        for decl in &program.classes {
            referenced.insert(decl.parent.clone());
            for (_, t) in &decl.fields {
                collect_type_classes(t, &mut referenced);
            }
            for m in &decl.methods {
                collect_type_classes(&m.ret, &mut referenced);
                for (_, t) in &m.params {
                    collect_type_classes(t, &mut referenced);
                }
                stack.push(ExprRef::Core(&m.body));
            }
        }
        let mut sink = |_: &Name, _: Vec<Type>| -> Result<(), ClassError> { Ok(()) };
        let mut names: Vec<ExprRef> = Vec::new();
        while let Some(item) = stack.pop() {
            match item {
                ExprRef::Core(e) => {
                    collect_core_classes(e, &mut referenced);
                    walk_core(e, &mut names, &mut sink)?;
                }
                ExprRef::Comb(e) => {
                    collect_comb_classes(e, &mut referenced);
                    walk_comb(e, &mut names, &mut sink)?;
                }
            }
            stack.append(&mut names);
        }
        for name in referenced {
            if !self.is_class(&name) {
                return Err(ClassError::UnknownClass(name));
            }
        }
        Ok(())
    }

    pub fn is_class(&self, name: &str) -> bool {
        name == OBJECT || name == PROOF || self.classes.contains_key(name)
    }

    fn class_descends(&self, sub: &str, sup: &str) -> bool {
        let mut cur = sub;
        loop {
            if cur == sup {
                return true;
            }
            match self.classes.get(cur) {
                Some(decl) => cur = &decl.parent,
                None if cur == PROOF => cur = OBJECT,
                None => return false,
            }
        }
    }

    /// Nominal subtyping: class extension chains, every proof type under
    /// `Proof`, and reflexivity everywhere else. References are invariant.
    pub fn subtype(&self, a: &Type, b: &Type) -> bool {
        match (a, b) {
            (Type::Class(c), Type::Class(d)) => self.class_descends(c, d),
            (Type::ProofOf(_), Type::Class(d)) => d == PROOF || d == OBJECT,
            (Type::ProofOf(a1), Type::ProofOf(a2)) => a1 == a2,
            _ => a == b,
        }
    }

    fn fields_unchecked(&self, class: &str) -> Vec<(Name, Type)> {
        let mut chain = Vec::new();
        let mut cur = class;
        while let Some(decl) = self.classes.get(cur) {
            chain.push(decl);
            cur = &decl.parent;
        }
        let mut out = Vec::new();
        for decl in chain.into_iter().rev() {
            out.extend(decl.fields.iter().cloned());
        }
        out
    }

    /// All fields of `class`, inherited first, in declaration order.
    pub fn fields(&self, class: &str) -> Option<Vec<(Name, Type)>> {
        if class == OBJECT || class == PROOF {
            return Some(Vec::new());
        }
        if !self.classes.contains_key(class) {
            return None;
        }
        Some(self.fields_unchecked(class))
    }

    pub fn mtype(&self, method: &str, class: &str) -> Option<(Vec<Type>, Label, Type)> {
        let (_, m) = self.lookup_method(class, method)?;
        Some((m.params.iter().map(|(_, t)| t.clone()).collect(), m.label, m.ret.clone()))
    }

    pub fn mbody(&self, method: &str, class: &str) -> Option<(Vec<Name>, &Expr)> {
        let (_, m) = self.lookup_method(class, method)?;
        Some((m.params.iter().map(|(x, _)| x.clone()).collect(), &m.body))
    }

    pub fn method_decl(&self, method: &str, class: &str) -> Option<&Method> {
        self.lookup_method(class, method).map(|(_, m)| m)
    }

    pub fn classes(&self) -> impl Iterator<Item = &ClassDecl> {
        self.classes.values()
    }

    /// Public-input types of a predicate, if the program defines it.
    pub fn p_types(&self, pred: &str) -> Option<&[Type]> {
        self.p_types.get(pred).map(|v| v.as_slice())
    }

    pub fn class_tag(&self, class: &str) -> Option<Label> {
        self.tags.get(class).copied()
    }

    /// True when no value of this type can reach a mutable reference. This is
    /// the gate for data crossing into predicates and combined blocks.
    pub fn no_refs(&self, t: &Type) -> bool {
        match t {
            Type::Unit | Type::Bool | Type::Int => true,
            Type::Ref(_) => false,
            Type::Class(c) => self.tags.get(c).copied() != Some(Label::C),
            Type::ProofOf(a) => !self.aware_preds.contains(a),
        }
    }

    pub fn no_refs_all<'a>(&self, ts: impl IntoIterator<Item = &'a Type>) -> bool {
        ts.into_iter().all(|t| self.no_refs(t))
    }
}

fn type_reaches_ref(
    t: &Type,
    aware_classes: &BTreeSet<Name>,
    aware_preds: &BTreeSet<Name>,
    aware_object: bool,
    aware_proof: bool,
) -> bool {
    match t {
        Type::Unit | Type::Bool | Type::Int => false,
        Type::Ref(_) => true,
        Type::Class(c) if c == OBJECT => aware_object,
        Type::Class(c) if c == PROOF => aware_proof,
        Type::Class(c) => aware_classes.contains(c),
        Type::ProofOf(a) => aware_preds.contains(a),
    }
}

fn collect_type_classes(t: &Type, out: &mut BTreeSet<Name>) {
    match t {
        Type::Class(c) => {
            out.insert(c.clone());
        }
        Type::Ref(inner) => collect_type_classes(inner, out),
        _ => {}
    }
}

fn collect_value_classes(v: &Value, out: &mut BTreeSet<Name>) {
    match v {
        Value::New(c, vs) => {
            out.insert(c.clone());
            for v in vs {
                collect_value_classes(v, out);
            }
        }
        Value::Proof { publics, .. } => {
            for v in publics {
                collect_value_classes(v, out);
            }
        }
        _ => {}
    }
}

enum ExprRef<'a> {
    Core(&'a Expr),
    Comb(&'a CombExpr),
}

/// Pushes subexpressions and reports predicate definitions to `record`.
fn walk_core<'a>(
    e: &'a Expr,
    stack: &mut Vec<ExprRef<'a>>,
    record: &mut impl FnMut(&Name, Vec<Type>) -> Result<(), ClassError>,
) -> Result<(), ClassError> {
    match e {
        Expr::If { then_branch, else_branch, .. } => {
            stack.push(ExprRef::Core(then_branch));
            stack.push(ExprRef::Core(else_branch));
        }
        Expr::Let { rhs, body, .. } => {
            stack.push(ExprRef::Core(rhs));
            stack.push(ExprRef::Core(body));
        }
        Expr::Prove(p) => {
            record(&p.pred, p.pub_binders.iter().map(|(_, t)| t.clone()).collect())?;
            stack.push(ExprRef::Core(&p.body));
        }
        Expr::Cnp(block) => {
            record(&block.pred, cnp_publics(block))?;
            stack.push(ExprRef::Comb(&block.body));
        }
        Expr::CnpRun(active) => {
            stack.push(ExprRef::Comb(&active.body));
        }
        _ => {}
    }
    Ok(())
}

fn walk_comb<'a>(
    e: &'a CombExpr,
    stack: &mut Vec<ExprRef<'a>>,
    record: &mut impl FnMut(&Name, Vec<Type>) -> Result<(), ClassError>,
) -> Result<(), ClassError> {
    match e {
        CombExpr::If { then_branch, else_branch, .. } => {
            stack.push(ExprRef::Comb(then_branch));
            stack.push(ExprRef::Comb(else_branch));
        }
        CombExpr::Let { rhs, body, .. } => {
            stack.push(ExprRef::Comb(rhs));
            stack.push(ExprRef::Comb(body));
        }
        CombExpr::Prove(p) => {
            record(&p.pred, p.pub_binders.iter().map(|(_, t)| t.clone()).collect())?;
            stack.push(ExprRef::Core(&p.body));
        }
        CombExpr::Cnp(block) => {
            record(&block.pred, cnp_publics(block))?;
            stack.push(ExprRef::Comb(&block.body));
        }
        CombExpr::CnpRun(active) => {
            stack.push(ExprRef::Comb(&active.body));
        }
        _ => {}
    }
    Ok(())
}

fn cnp_publics(block: &CnpBlock) -> Vec<Type> {
    block
        .pub_given
        .iter()
        .map(|(_, t, _)| t.clone())
        .chain(block.pub_inputs.iter().map(|(_, t)| t.clone()))
        .collect()
}

fn collect_core_classes(e: &Expr, out: &mut BTreeSet<Name>) {
    match e {
        Expr::Val(v) => collect_value_classes(v, out),
        Expr::Cast { class, value } => {
            out.insert(class.clone());
            collect_value_classes(value, out);
        }
        Expr::Field { value, .. } => collect_value_classes(value, out),
        Expr::Call { recv, args, .. } => {
            collect_value_classes(recv, out);
            for a in args {
                collect_value_classes(a, out);
            }
        }
        Expr::Prim { args, .. } => {
            for a in args {
                collect_value_classes(a, out);
            }
        }
        Expr::Alloc { ty } => collect_type_classes(ty, out),
        Expr::Ref { value } | Expr::Deref { value } => collect_value_classes(value, out),
        Expr::Assign { target, value } => {
            collect_value_classes(target, out);
            collect_value_classes(value, out);
        }
        Expr::If { guard, .. } => collect_value_classes(guard, out),
        Expr::Let { ty, .. } => collect_type_classes(ty, out),
        Expr::Prove(p) => collect_prove_classes(p, out),
        Expr::Verify { proof, publics, .. } => {
            collect_value_classes(proof, out);
            for v in publics {
                collect_value_classes(v, out);
            }
        }
        Expr::Cnp(b) => collect_cnp_classes(b, out),
        Expr::CnpRun(a) => {
            for (_, t) in a.pub_inputs.iter().chain(&a.sec_inputs) {
                collect_type_classes(t, out);
            }
        }
        Expr::InputAssign { value, .. } => collect_value_classes(value, out),
        Expr::InputDeref { .. } => {}
    }
}

fn collect_comb_classes(e: &CombExpr, out: &mut BTreeSet<Name>) {
    match e {
        CombExpr::Val(v) => collect_value_classes(v, out),
        CombExpr::Cast { class, value } => {
            out.insert(class.clone());
            collect_value_classes(value, out);
        }
        CombExpr::Field { value, .. } => collect_value_classes(value, out),
        CombExpr::Call { recv, args, .. } => {
            collect_value_classes(recv, out);
            for a in args {
                collect_value_classes(a, out);
            }
        }
        CombExpr::Prim { args, .. } => {
            for a in args {
                collect_value_classes(a, out);
            }
        }
        CombExpr::Alloc { ty } => collect_type_classes(ty, out),
        CombExpr::Ref { value, .. } | CombExpr::Deref { value } => {
            collect_value_classes(value, out)
        }
        CombExpr::Assign { target, value } => {
            collect_value_classes(target, out);
            collect_value_classes(value, out);
        }
        CombExpr::If { guard, .. } => collect_value_classes(guard, out),
        CombExpr::Let { ty, .. } => collect_type_classes(ty, out),
        CombExpr::Prove(p) => collect_prove_classes(p, out),
        CombExpr::Verify { proof, publics, .. } => {
            collect_value_classes(proof, out);
            for v in publics {
                collect_value_classes(v, out);
            }
        }
        CombExpr::Cnp(b) => collect_cnp_classes(b, out),
        CombExpr::CnpRun(a) => {
            for (_, t) in a.pub_inputs.iter().chain(&a.sec_inputs) {
                collect_type_classes(t, out);
            }
        }
        CombExpr::InputAssign { value, .. } => collect_value_classes(value, out),
        CombExpr::InputDeref { .. } => {}
    }
}

fn collect_prove_classes(p: &ProveForm<Value>, out: &mut BTreeSet<Name>) {
    for (_, t) in p.pub_binders.iter().chain(&p.sec_binders) {
        collect_type_classes(t, out);
    }
    for v in p.pub_args.iter().chain(&p.sec_args) {
        collect_value_classes(v, out);
    }
}

fn collect_cnp_classes(b: &CnpBlock, out: &mut BTreeSet<Name>) {
    for (_, t) in b.pub_inputs.iter().chain(&b.sec_inputs) {
        collect_type_classes(t, out);
    }
    for (_, t, v) in b.pub_given.iter().chain(&b.sec_given) {
        collect_type_classes(t, out);
        collect_value_classes(v, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn class(name: &str, parent: &str, fields: Vec<(&str, Type)>) -> ClassDecl {
        ClassDecl {
            name: name.into(),
            parent: parent.into(),
            aware: None,
            fields: fields.into_iter().map(|(f, t)| (f.to_string(), t)).collect(),
            methods: vec![],
        }
    }

    fn program(classes: Vec<ClassDecl>) -> Program {
        Program { classes, main: Expr::Val(Value::Unit) }
    }

    #[test]
    fn fields_accumulate_down_the_chain() {
        let p = program(vec![
            class("A", OBJECT, vec![("x", Type::Int)]),
            class("B", "A", vec![("y", Type::Bool)]),
        ]);
        let ct = ClassTable::build(&p).unwrap();
        let fs = ct.fields("B").unwrap();
        assert_eq!(fs, vec![("x".to_string(), Type::Int), ("y".to_string(), Type::Bool)]);
        assert!(ct.subtype(&Type::class("B"), &Type::class("A")));
        assert!(ct.subtype(&Type::class("B"), &Type::class(OBJECT)));
        assert!(!ct.subtype(&Type::class("A"), &Type::class("B")));
    }

    #[test]
    fn awareness_spreads_from_subclass_refs() {
        // Clean parent, ref-holding child: parent becomes context-aware
        // because a value typed at the parent may be the child.
        let p = program(vec![
            class("Box", OBJECT, vec![]),
            class("RefBox", "Box", vec![("cell", Type::reference(Type::Int))]),
        ]);
        let ct = ClassTable::build(&p).unwrap();
        assert_eq!(ct.class_tag("RefBox"), Some(Label::C));
        assert_eq!(ct.class_tag("Box"), Some(Label::C));
        assert_eq!(ct.class_tag(OBJECT), Some(Label::C));
        assert!(!ct.no_refs(&Type::class("Box")));
        assert!(ct.no_refs(&Type::Int));
    }

    #[test]
    fn clean_table_is_unaware() {
        let p = program(vec![class("Pair", OBJECT, vec![("a", Type::Int), ("b", Type::Int)])]);
        let ct = ClassTable::build(&p).unwrap();
        assert_eq!(ct.class_tag("Pair"), Some(Label::CP));
        assert_eq!(ct.class_tag(OBJECT), Some(Label::CP));
        assert!(ct.no_refs(&Type::class("Pair")));
        assert!(ct.no_refs(&Type::class(OBJECT)));
        assert!(!ct.no_refs(&Type::reference(Type::Int)));
    }

    #[test]
    fn declared_tag_must_match_inference() {
        let mut decl = class("Pair", OBJECT, vec![("a", Type::Int)]);
        decl.aware = Some(Label::C);
        let p = program(vec![decl]);
        assert!(matches!(
            ClassTable::build(&p),
            Err(ClassError::AwarenessMismatch(..))
        ));
    }

    #[test]
    fn cycles_are_rejected() {
        let p = program(vec![class("A", "B", vec![]), class("B", "A", vec![])]);
        assert!(matches!(ClassTable::build(&p), Err(ClassError::InheritanceCycle(_))));
    }

    #[test]
    fn undeclared_reference_is_rejected() {
        let p = Program {
            classes: vec![],
            main: Expr::Val(Value::New("Ghost".into(), vec![])),
        };
        assert!(matches!(ClassTable::build(&p), Err(ClassError::UnknownClass(_))));
    }
}
