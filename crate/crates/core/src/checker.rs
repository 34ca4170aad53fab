//! Reverse check: replay sequence diagrams on a statechart and search for
//! the smallest set of message insertions and deletions that makes a
//! rejected diagram acceptable again.

use std::collections::{BTreeMap, HashSet};

use crate::annotator::{annotate, AnnotationConfig};
use crate::model::{
    CellValue, Condition, DomainTheory, Message, Operand, RepairEdit, SequenceDiagram, StateVector, Statechart,
    Transition,
};
use crate::synthesizer::{lifeline_steps, LifelineStep};

pub const DEFAULT_MAX_EDITS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CheckConfig {
    /// Unknown state variables fail guards instead of satisfying them.
    pub strict_guards: bool,
    pub annotation: AnnotationConfig,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayStep {
    /// Id of the first message of the step.
    pub message: usize,
    pub event: Option<String>,
    pub actions: Vec<String>,
    pub from: String,
    pub outcome: StepOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepOutcome {
    Matched { to: String, transition: Transition },
    Mismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accepted,
    /// Index into `steps` of the first step that could not be matched.
    RejectedAt(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayTrace {
    pub sd: String,
    pub object: String,
    pub steps: Vec<ReplayStep>,
    pub verdict: Verdict,
}

impl ReplayTrace {
    pub fn accepted(&self) -> bool {
        self.verdict == Verdict::Accepted
    }

    fn progress(&self) -> usize {
        match self.verdict {
            Verdict::Accepted => usize::MAX,
            Verdict::RejectedAt(i) => i,
        }
    }
}

fn guard_holds(guard: &Condition, state: Option<&StateVector>, dt: &DomainTheory, strict: bool) -> bool {
    guard.atoms.iter().all(|atom| {
        let cell = dt
            .variable(&atom.var)
            .and_then(|v| state.map(|s| s.get(v.index).clone()))
            .unwrap_or(CellValue::Unknown);
        let Operand::Value(want) = &atom.value else {
            return !strict;
        };
        match cell {
            CellValue::Unknown => !strict,
            CellValue::Known(have) => have == *want,
        }
    })
}

struct Replayer<'a> {
    chart: Statechart,
    steps: Vec<LifelineStep<'a>>,
    states: Option<BTreeMap<usize, StateVector>>,
    dt: &'a DomainTheory,
    strict: bool,
}

impl Replayer<'_> {
    fn candidates(&self, from: &str, k: usize) -> Vec<&Transition> {
        let step = &self.steps[k];
        let event = step.event();
        let actions = step.actions();
        let state = self.states.as_ref().and_then(|m| m.get(&step.first().id));
        self.chart
            .transitions
            .iter()
            .filter(|t| {
                t.from == from
                    && t.event == event
                    && t.actions == actions
                    && t.guard
                        .as_ref()
                        .is_none_or(|g| guard_holds(g, state, self.dt, self.strict))
            })
            .collect()
    }

    /// Depth-first search; returns the path of the deepest attempt.
    fn search(
        &self,
        k: usize,
        state: &str,
        failed: &mut HashSet<(usize, String)>,
        best: &mut Vec<(String, Transition)>,
        path: &mut Vec<(String, Transition)>,
    ) -> bool {
        if k == self.steps.len() {
            *best = path.clone();
            return true;
        }
        if failed.contains(&(k, state.to_string())) {
            return false;
        }
        for t in self.candidates(state, k) {
            path.push((state.to_string(), t.clone()));
            if path.len() > best.len() {
                *best = path.clone();
            }
            if self.search(k + 1, &t.to, failed, best, path) {
                return true;
            }
            path.pop();
        }
        failed.insert((k, state.to_string()));
        false
    }
}

/// Replay the object's part of `sd` on the flattened chart. A step is a
/// received message (or the leading sends, matched by a completion
/// transition) together with the sends that follow it.
pub fn replay(
    sd: &SequenceDiagram,
    object: &str,
    chart: &Statechart,
    dt: &DomainTheory,
    cfg: &CheckConfig,
) -> ReplayTrace {
    let flat = chart.flatten();
    let steps = lifeline_steps(sd, object);
    let has_guards = flat.transitions.iter().any(|t| t.guard.is_some());
    let states = has_guards.then(|| {
        annotate(sd, dt, &cfg.annotation)
            .map(|a| sd.messages.iter().map(|m| (m.id, a.asd.pre(m.id).clone())).collect())
            .unwrap_or_default()
    });
    let r = Replayer {
        chart: flat,
        steps,
        states,
        dt,
        strict: cfg.strict_guards,
    };
    let mut best = Vec::new();
    let ok = r.search(0, &r.chart.initial, &mut HashSet::new(), &mut best, &mut Vec::new());
    let mut out: Vec<ReplayStep> = best
        .into_iter()
        .zip(&r.steps)
        .map(|((from, t), step)| ReplayStep {
            message: step.first().id,
            event: step.event(),
            actions: step.actions(),
            from,
            outcome: StepOutcome::Matched {
                to: t.to.clone(),
                transition: t,
            },
        })
        .collect();
    let verdict = if ok {
        Verdict::Accepted
    } else {
        let k = out.len();
        let step = &r.steps[k];
        let from = match out.last() {
            Some(ReplayStep {
                outcome: StepOutcome::Matched { to, .. },
                ..
            }) => to.clone(),
            _ => r.chart.initial.clone(),
        };
        let what = match step.event() {
            Some(e) => format!("event \"{e}\""),
            None => "completion".to_string(),
        };
        let reason = if step.sends.is_empty() {
            format!("no transition from {from} on {what}")
        } else {
            format!(
                "no transition from {from} on {what} with actions {}",
                step.actions().join(", ")
            )
        };
        out.push(ReplayStep {
            message: step.first().id,
            event: step.event(),
            actions: step.actions(),
            from,
            outcome: StepOutcome::Mismatch(reason),
        });
        Verdict::RejectedAt(k)
    };
    ReplayTrace {
        sd: sd.name.clone(),
        object: object.to_string(),
        steps: out,
        verdict,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepairResult {
    pub edits: Vec<RepairEdit>,
    pub repaired_sd: SequenceDiagram,
    pub cost: usize,
    pub annotation_ok: bool,
}

/// No repair with at most `max_edits` edits exists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoRepairWithinBound {
    pub max_edits: usize,
    /// Number of candidate diagrams examined.
    pub explored: usize,
    /// Edited diagram whose replay got furthest, with its trace.
    pub best: Option<Box<(Vec<RepairEdit>, ReplayTrace)>>,
}

/// Candidate messages for insertion: context names of the theory (with
/// every ground argument tuple), then the chart's event and action labels.
/// Each is offered first as received by `object`, then as sent by it.
pub fn insert_candidates(sd: &SequenceDiagram, object: &str, chart: &Statechart, dt: &DomainTheory) -> Vec<Message> {
    let mut texts: Vec<(String, Vec<String>)> = Vec::new();
    let mut push = |label: String, args: Vec<String>| {
        if !texts.iter().any(|(l, a)| *l == label && *a == args) {
            texts.push((label, args));
        }
    };
    for spec in &dt.specs {
        let mut tuples: Vec<Vec<String>> = vec![Vec::new()];
        for (_, dom) in &spec.params {
            tuples = tuples
                .into_iter()
                .flat_map(|t| {
                    dom.values().into_iter().map(move |v| {
                        let mut t = t.clone();
                        t.push(v.to_string());
                        t
                    })
                })
                .collect();
        }
        for t in tuples {
            push(spec.name.clone(), t);
        }
    }
    let flat = chart.flatten();
    for t in &flat.transitions {
        for text in t.event.iter().chain(&t.actions) {
            let (label, args) = split_text(text);
            push(label, args);
        }
    }
    let other = sd
        .objects
        .iter()
        .find(|o| *o != object)
        .cloned()
        .unwrap_or_else(|| object.to_string());
    let mut out = Vec::new();
    for (label, args) in texts {
        for (sender, receiver) in [(other.clone(), object.to_string()), (object.to_string(), other.clone())] {
            let m = Message {
                id: 0,
                label: label.clone(),
                args: args.clone(),
                sender,
                receiver,
            };
            if !out.contains(&m) {
                out.push(m);
            }
        }
    }
    out
}

fn split_text(text: &str) -> (String, Vec<String>) {
    match (text.find('('), text.ends_with(')')) {
        (Some(open), true) => {
            let inner = &text[open + 1..text.len() - 1];
            let args = if inner.trim().is_empty() {
                Vec::new()
            } else {
                inner.split(',').map(|a| a.trim().to_string()).collect()
            };
            (text[..open].trim().to_string(), args)
        }
        _ => (text.to_string(), Vec::new()),
    }
}

struct Search<'a> {
    object: &'a str,
    chart: &'a Statechart,
    flat: Statechart,
    dt: &'a DomainTheory,
    cfg: &'a CheckConfig,
    candidates: Vec<Message>,
    explored: usize,
    failed: HashSet<(Vec<Message>, usize, usize)>,
    best: Option<Box<(Vec<RepairEdit>, ReplayTrace)>>,
}

impl Search<'_> {
    fn is_goal(&mut self, sd: &SequenceDiagram, edits: &[RepairEdit]) -> bool {
        self.explored += 1;
        let trace = replay(sd, self.object, self.chart, self.dt, self.cfg);
        let better = self.best.as_ref().is_none_or(|b| trace.progress() > b.1.progress());
        let accepted = trace.accepted();
        if better {
            self.best = Some(Box::new((edits.to_vec(), trace)));
        }
        accepted && annotate(sd, self.dt, &self.cfg.annotation).is_ok_and(|a| a.conflicts.is_empty())
    }

    /// Can the messages before `pos` still be part of an accepted replay?
    /// Only steps that end before `pos` are checked, and guards are ignored.
    fn prefix_viable(&self, sd: &SequenceDiagram, pos: usize) -> bool {
        let steps = lifeline_steps(sd, self.object);
        let mut current: Vec<&str> = vec![&self.flat.initial];
        for (k, step) in steps.iter().enumerate() {
            let closed = steps.get(k + 1).is_some_and(|n| n.first().id <= pos);
            if !closed {
                break;
            }
            let (event, actions) = (step.event(), step.actions());
            let mut next: Vec<&str> = self
                .flat
                .transitions
                .iter()
                .filter(|t| current.contains(&t.from.as_str()) && t.event == event && t.actions == actions)
                .map(|t| t.to.as_str())
                .collect();
            next.sort_unstable();
            next.dedup();
            if next.is_empty() {
                return false;
            }
            current = next;
        }
        true
    }

    fn dfs(
        &mut self,
        sd: &SequenceDiagram,
        min_pos: usize,
        remaining: usize,
        edits: &mut Vec<RepairEdit>,
    ) -> Option<SequenceDiagram> {
        if remaining == 0 {
            return self.is_goal(sd, edits).then(|| sd.clone());
        }
        let key = (sd.messages.clone(), min_pos, remaining);
        if self.failed.contains(&key) || !self.prefix_viable(sd, min_pos) {
            return None;
        }
        let n = sd.messages.len();
        for p in min_pos..n {
            let edit = RepairEdit::Delete { at: p };
            if let Some(found) = self.apply(sd, edit, p, remaining, edits) {
                return Some(found);
            }
        }
        for p in min_pos..=n {
            for c in 0..self.candidates.len() {
                let edit = RepairEdit::Insert {
                    message: self.candidates[c].clone(),
                    at: p,
                };
                if let Some(found) = self.apply(sd, edit, p + 1, remaining, edits) {
                    return Some(found);
                }
            }
        }
        self.failed.insert(key);
        None
    }

    fn apply(
        &mut self,
        sd: &SequenceDiagram,
        edit: RepairEdit,
        next_pos: usize,
        remaining: usize,
        edits: &mut Vec<RepairEdit>,
    ) -> Option<SequenceDiagram> {
        let mut next = sd.clone();
        edit.apply(&mut next);
        edits.push(edit);
        let found = self.dfs(&next, next_pos, remaining - 1, edits);
        if found.is_none() {
            edits.pop();
        }
        found
    }
}

/// Fewest insertions and deletions of whole messages after which `sd`
/// replays on the chart and annotates without conflicts. Depth `d` is tried
/// only after every depth below it failed; within a depth, deletions come
/// before insertions, lower positions first, then candidate order.
pub fn repair(
    sd: &SequenceDiagram,
    object: &str,
    chart: &Statechart,
    dt: &DomainTheory,
    max_edits: usize,
    cfg: &CheckConfig,
) -> Result<RepairResult, NoRepairWithinBound> {
    let mut search = Search {
        object,
        chart,
        flat: chart.flatten(),
        dt,
        cfg,
        candidates: insert_candidates(sd, object, chart, dt),
        explored: 0,
        failed: HashSet::new(),
        best: None,
    };
    for depth in 0..=max_edits {
        let mut edits = Vec::new();
        if let Some(repaired_sd) = search.dfs(sd, 0, depth, &mut edits) {
            return Ok(RepairResult {
                cost: edits.len(),
                edits,
                repaired_sd,
                annotation_ok: true,
            });
        }
    }
    Err(NoRepairWithinBound {
        max_edits,
        explored: search.explored,
        best: search.best,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckResult {
    pub sd: String,
    pub object: String,
    pub trace: ReplayTrace,
    pub repair: Option<Result<RepairResult, NoRepairWithinBound>>,
}

/// Replay every diagram for every object that has a chart; repair the
/// rejected pairs.
pub fn check_all(
    dt: &DomainTheory,
    charts: &BTreeMap<String, Statechart>,
    sds: &[SequenceDiagram],
    max_edits: usize,
    cfg: &CheckConfig,
) -> Vec<CheckResult> {
    let mut out = Vec::new();
    for sd in sds {
        for object in &sd.objects {
            let Some(chart) = charts.get(object) else { continue };
            let trace = replay(sd, object, chart, dt, cfg);
            let repair = (!trace.accepted()).then(|| repair(sd, object, chart, dt, max_edits, cfg));
            out.push(CheckResult {
                sd: sd.name.clone(),
                object: object.clone(),
                trace,
                repair,
            });
        }
    }
    out
}
