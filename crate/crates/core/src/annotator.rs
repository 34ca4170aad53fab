//! State-vector annotation of sequence diagrams.
//!
//! Every message `i` carries two vectors: `pre i`, the state just before it
//! is sent, and `post i`, the state just after it is received. Together they
//! form one chain `pre 1, post 1, pre 2, ..., post n` in diagram order.
//! Vectors start from the message specs, the frame rule copies values along
//! the chain, and unification merges two vectors that may describe the same
//! system state (a potential loop). A conflict is a junction
//! `post i` / `pre i+1` where both carry different known values.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::model::{
    unify, AnnotatedSD, AnnotatedVector, CellValue, Conflict, DerivationStep, DomainTheory, NoLoop, Operand,
    Provenance, SequenceDiagram, Side, StateVector, Value, VectorId,
};

pub const DEFAULT_MAX_UNIFY_PASSES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnnotateError {
    #[error("message {message}: unknown state variable `{variable}`")]
    UnknownVariable { message: usize, variable: String },
    #[error("message {message}: `{value}` is outside the domain of `{variable}`")]
    OutOfDomainLiteral {
        message: usize,
        variable: String,
        value: String,
    },
    #[error("message {message}: `{label}` takes {expected} argument(s), {found} given")]
    ArityMismatch {
        message: usize,
        label: String,
        expected: usize,
        found: usize,
    },
    #[error("message {message}: sender or receiver is not a declared object")]
    UndeclaredObject { message: usize },
    #[error("unification did not settle within {0} passes")]
    NonTermination(usize),
}

/// Order in which candidate vector pairs are tried.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum ScanOrder {
    /// Earlier vector first; for each, partners from the latest vector back.
    #[default]
    LatestPartnerFirst,
    /// Only the listed pairs, in the listed order.
    Explicit(Vec<(VectorId, VectorId)>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationConfig {
    /// Vector pairs that must never be unified (stored smaller id first).
    pub discarded_unifiers: BTreeSet<(VectorId, VectorId)>,
    /// Message ranges assumed loop-free: no two vectors whose messages both
    /// fall inside a range are unified. Unioned with the SD's directives.
    pub no_loops: Vec<NoLoop>,
    pub max_unify_passes: usize,
    pub scan: ScanOrder,
}

impl Default for AnnotationConfig {
    fn default() -> Self {
        AnnotationConfig {
            discarded_unifiers: BTreeSet::new(),
            no_loops: Vec::new(),
            max_unify_passes: DEFAULT_MAX_UNIFY_PASSES,
            scan: ScanOrder::default(),
        }
    }
}

impl AnnotationConfig {
    pub fn discard(&mut self, a: VectorId, b: VectorId) {
        self.discarded_unifiers.insert((a.min(b), a.max(b)));
    }

    fn forbids(&self, sd: &SequenceDiagram, a: VectorId, b: VectorId) -> bool {
        self.discarded_unifiers.contains(&(a.min(b), a.max(b)))
            || self
                .no_loops
                .iter()
                .chain(&sd.no_loops)
                .any(|n| n.covers(a.message, b.message))
    }
}

/// One applied unifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Unification {
    pub first: VectorId,
    pub second: VectorId,
    pub result: StateVector,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Annotation {
    pub asd: AnnotatedSD,
    pub conflicts: Vec<Conflict>,
    pub trace: Vec<Unification>,
}

fn resolve_arg(
    dt: &DomainTheory,
    message: usize,
    var: &str,
    operand: &Operand,
    params: &[(String, crate::model::VarDomain)],
    args: &[String],
) -> Result<Value, AnnotateError> {
    let Some(v) = dt.variable(var) else {
        return Err(AnnotateError::UnknownVariable {
            message,
            variable: var.to_string(),
        });
    };
    let (value, text) = match operand {
        Operand::Value(val) => (Some(val.clone()), val.to_string()),
        Operand::Param(p) => {
            let idx = params
                .iter()
                .position(|(q, _)| q == p)
                .ok_or_else(|| AnnotateError::UnknownVariable {
                    message,
                    variable: p.clone(),
                })?;
            let arg = &args[idx];
            (params[idx].1.parse_literal(arg), arg.clone())
        }
    };
    match value {
        Some(val) if v.domain.contains(&val) => Ok(val),
        _ => Err(AnnotateError::OutOfDomainLiteral {
            message,
            variable: var.to_string(),
            value: text,
        }),
    }
}

/// Build `pre i` / `post i` from the message specs; unconstrained cells are
/// Unknown.
pub fn initialize_vectors(sd: &SequenceDiagram, dt: &DomainTheory) -> Result<AnnotatedSD, AnnotateError> {
    let width = dt.width();
    let mut vectors = Vec::with_capacity(2 * sd.messages.len());
    for m in &sd.messages {
        if !sd.has_object(&m.sender) || !sd.has_object(&m.receiver) {
            return Err(AnnotateError::UndeclaredObject { message: m.id });
        }
        let spec = dt.spec_for(&m.label);
        if let Some(spec) = spec {
            if spec.params.len() != m.args.len() {
                return Err(AnnotateError::ArityMismatch {
                    message: m.id,
                    label: m.label.clone(),
                    expected: spec.params.len(),
                    found: m.args.len(),
                });
            }
        }
        for side in [Side::Pre, Side::Post] {
            let mut vector = StateVector::unknown(width);
            let mut provenance = vec![Provenance::Initial; width];
            if let Some(spec) = spec {
                let cond = if side == Side::Pre { &spec.pre } else { &spec.post };
                for atom in &cond.atoms {
                    let value = resolve_arg(dt, m.id, &atom.var, &atom.value, &spec.params, &m.args)?;
                    let idx = dt.variable(&atom.var).unwrap().index;
                    vector.set(idx, CellValue::Known(value));
                    provenance[idx] = Provenance::FromSpec { message: m.id, side };
                }
            }
            let id = VectorId { message: m.id, side };
            vectors.push(AnnotatedVector { id, vector, provenance });
        }
    }
    Ok(AnnotatedSD::new(sd.clone(), vectors))
}

/// Chain order: pre 1, post 1, pre 2, ...
fn chain(n: usize) -> impl DoubleEndedIterator<Item = VectorId> + Clone {
    (1..=n).flat_map(|m| [VectorId::pre(m), VectorId::post(m)])
}

/// Copy known values forward along the chain into Unknown cells, to
/// fixpoint. Returns whether anything changed.
pub fn frame_propagate(asd: &mut AnnotatedSD) -> bool {
    let ids: Vec<VectorId> = chain(asd.sd.messages.len()).collect();
    let mut changed = false;
    for pair in ids.windows(2) {
        let (src, dst) = (pair[0], pair[1]);
        let source = asd.vector(src).vector.clone();
        let target = asd.vector_mut(dst);
        for (j, cell) in source.cells().iter().enumerate() {
            if cell.is_known() && !target.vector.get(j).is_known() {
                target.vector.set(j, cell.clone());
                target.provenance[j] = Provenance::Frame { source: src };
                changed = true;
            }
        }
    }
    changed
}

/// Apply the unifier of `a` and `b` to both vectors. Returns the unified
/// vector, or `None` when the two clash.
pub fn apply_unification(asd: &mut AnnotatedSD, a: VectorId, b: VectorId) -> Option<StateVector> {
    let va = asd.vector(a).vector.clone();
    let vb = asd.vector(b).vector.clone();
    let u = unify(&va, &vb)?;
    for (me, other, mine) in [(a, b, &va), (b, a, &vb)] {
        let target = asd.vector_mut(me);
        for j in 0..u.len() {
            if !mine.get(j).is_known() && u.get(j).is_known() {
                target.vector.set(j, u.get(j).clone());
                target.provenance[j] = Provenance::Unified { with: other };
            }
        }
    }
    Some(u)
}

fn grounds_something(a: &StateVector, b: &StateVector) -> Option<StateVector> {
    let u = unify(a, b)?;
    (u != *a || u != *b).then_some(u)
}

/// First unifiable pair (in scan order) whose unifier grounds a cell.
pub fn find_unifier(asd: &AnnotatedSD, cfg: &AnnotationConfig) -> Option<(VectorId, VectorId)> {
    let sd = &asd.sd;
    let ok = |a: VectorId, b: VectorId| {
        a != b && !cfg.forbids(sd, a, b) && grounds_something(&asd.vector(a).vector, &asd.vector(b).vector).is_some()
    };
    match &cfg.scan {
        ScanOrder::LatestPartnerFirst => {
            let ids: Vec<VectorId> = chain(sd.messages.len()).collect();
            for (k, &a) in ids.iter().enumerate() {
                for &b in ids[k + 1..].iter().rev() {
                    if ok(a, b) {
                        return Some((a, b));
                    }
                }
            }
            None
        }
        ScanOrder::Explicit(pairs) => pairs.iter().copied().find(|&(a, b)| ok(a, b)),
    }
}

/// Apply the first available unifier, if any.
pub fn unify_step(asd: &mut AnnotatedSD, cfg: &AnnotationConfig) -> Option<Unification> {
    let (first, second) = find_unifier(asd, cfg)?;
    let result = apply_unification(asd, first, second).expect("candidate pairs are unifiable");
    Some(Unification { first, second, result })
}

/// Apply unifiers until none grounds anything, without frame propagation.
pub fn unify_pass(asd: &mut AnnotatedSD, cfg: &AnnotationConfig) -> Vec<Unification> {
    let mut out = Vec::new();
    while out.len() < cfg.max_unify_passes {
        match unify_step(asd, cfg) {
            Some(u) => out.push(u),
            None => break,
        }
    }
    out
}

/// Run frame propagation and unification to their joint fixpoint: frame
/// first, then one unifier at a time, each followed by frame propagation.
pub fn saturate(asd: &mut AnnotatedSD, cfg: &AnnotationConfig) -> Result<Vec<Unification>, AnnotateError> {
    frame_propagate(asd);
    let mut trace = Vec::new();
    while let Some(u) = unify_step(asd, cfg) {
        trace.push(u);
        if trace.len() > cfg.max_unify_passes {
            return Err(AnnotateError::NonTermination(cfg.max_unify_passes));
        }
        frame_propagate(asd);
    }
    Ok(trace)
}

fn walk_back(asd: &AnnotatedSD, mut id: VectorId, cell: usize, out: &mut Vec<DerivationStep>) {
    loop {
        let provenance = asd.vector(id).provenance[cell].clone();
        out.push(DerivationStep {
            vector: id,
            cell,
            provenance: provenance.clone(),
            value: asd.vector(id).vector.clone(),
            message: asd.sd.message(id.message).map(|m| m.text()).unwrap_or_default(),
        });
        match provenance {
            Provenance::Frame { source } => id = source,
            Provenance::Unified { with } => id = with,
            Provenance::Initial | Provenance::FromSpec { .. } => return,
        }
    }
}

/// Object at which a conflict between message `i` and `i + 1` is reported:
/// the receiver of `i` when it takes part in `i + 1`, otherwise another
/// participant shared by both messages, otherwise the receiver of `i`.
fn junction_object(sd: &SequenceDiagram, i: usize) -> String {
    let a = sd.message(i).unwrap();
    let b = sd.message(i + 1).unwrap();
    let in_b = |o: &str| b.sender == o || b.receiver == o;
    if in_b(&a.receiver) {
        a.receiver.clone()
    } else if in_b(&a.sender) {
        a.sender.clone()
    } else {
        a.receiver.clone()
    }
}

/// Every junction `post i` / `pre i+1` cell holding two different known
/// values, with the provenance chains of both cells.
pub fn detect_conflicts(asd: &AnnotatedSD, dt: &DomainTheory) -> Vec<Conflict> {
    let sd = &asd.sd;
    let mut out = Vec::new();
    for i in 1..sd.messages.len() {
        let after = asd.post(i);
        let before = asd.pre(i + 1);
        for j in 0..after.len() {
            let (x, y) = (after.get(j), before.get(j));
            if x.is_known() && y.is_known() && x != y {
                let mut derivation = Vec::new();
                walk_back(asd, VectorId::post(i), j, &mut derivation);
                walk_back(asd, VectorId::pre(i + 1), j, &mut derivation);
                out.push(Conflict {
                    sd: sd.name.clone(),
                    object: junction_object(sd, i),
                    after: sd.message(i).unwrap().clone(),
                    before: sd.message(i + 1).unwrap().clone(),
                    variable: dt.variables[j].clone(),
                    value_after: x.clone(),
                    value_before: y.clone(),
                    vector_after: after.clone(),
                    vector_before: before.clone(),
                    derivation,
                });
            }
        }
    }
    out
}

pub fn annotate(sd: &SequenceDiagram, dt: &DomainTheory, cfg: &AnnotationConfig) -> Result<Annotation, AnnotateError> {
    let mut asd = initialize_vectors(sd, dt)?;
    let trace = saturate(&mut asd, cfg)?;
    let conflicts = detect_conflicts(&asd, dt);
    Ok(Annotation { asd, conflicts, trace })
}
