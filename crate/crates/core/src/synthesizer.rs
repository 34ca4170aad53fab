//! Statechart synthesis from annotated sequence diagrams.
//!
//! For one object, each state is a state vector on the annotation chain.
//! A message received by the object becomes the event of a transition, the
//! messages it sends afterwards (up to its next receive) become the actions.
//! Sends before the first receive form a completion transition out of the
//! initial state. Vectors made equal by unification land on the same state,
//! which is how loops appear.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::annotator::{annotate, AnnotateError, AnnotationConfig};
use crate::model::{
    unify, AnnotatedSD, Conflict, DomainTheory, Message, Node, SequenceDiagram, StateVector, Statechart, Transition,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("{} conflict(s) must be resolved before synthesis", .0.len())]
    Conflicts(Vec<Conflict>),
    #[error("object `{object}` still has conflicts in {sd}")]
    ConflictedInput { sd: String, object: String },
    #[error("{sd}: {source}")]
    Annotate { sd: String, source: AnnotateError },
}

/// One step of an object's lifeline: an optional received message followed
/// by the messages the object sends before its next receive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LifelineStep<'a> {
    pub received: Option<&'a Message>,
    pub sends: Vec<&'a Message>,
}

impl LifelineStep<'_> {
    pub fn last(&self) -> &Message {
        self.sends
            .last()
            .copied()
            .or(self.received)
            .expect("steps are nonempty")
    }

    pub fn first(&self) -> &Message {
        self.received
            .or(self.sends.first().copied())
            .expect("steps are nonempty")
    }

    pub fn event(&self) -> Option<String> {
        self.received.map(Message::text)
    }

    pub fn actions(&self) -> Vec<String> {
        self.sends.iter().map(|m| m.text()).collect()
    }
}

/// Split the object's lifeline into steps. Self-messages count as receives.
pub fn lifeline_steps<'a>(sd: &'a SequenceDiagram, object: &'a str) -> Vec<LifelineStep<'a>> {
    let mut steps: Vec<LifelineStep<'a>> = Vec::new();
    for m in sd.lifeline(object) {
        if m.receiver == object {
            steps.push(LifelineStep {
                received: Some(m),
                sends: Vec::new(),
            });
        } else {
            match steps.last_mut() {
                Some(step) => step.sends.push(m),
                None => steps.push(LifelineStep {
                    received: None,
                    sends: vec![m],
                }),
            }
        }
    }
    steps
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlatTransition {
    pub from: usize,
    pub to: usize,
    pub event: Option<String>,
    pub actions: Vec<String>,
}

/// A chart whose states are state vectors. State `i` prints as `N{i+1}`.
/// A chart without states is the empty chart.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FlatChart {
    pub states: Vec<StateVector>,
    pub initial: usize,
    pub transitions: Vec<FlatTransition>,
}

impl FlatChart {
    pub fn empty() -> Self {
        FlatChart::default()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    fn state_for(&mut self, v: &StateVector) -> usize {
        match self.states.iter().position(|s| s == v) {
            Some(i) => i,
            None => {
                self.states.push(v.clone());
                self.states.len() - 1
            }
        }
    }

    fn add_transition(&mut self, t: FlatTransition) {
        if !self.transitions.contains(&t) {
            self.transitions.push(t);
        }
    }

    pub fn state_name(i: usize) -> String {
        format!("N{}", i + 1)
    }

    /// The same chart as a flat [`Statechart`].
    pub fn to_statechart(&self, name: &str) -> Statechart {
        Statechart {
            name: name.to_string(),
            nodes: (0..self.states.len())
                .map(|i| Node::Simple(Self::state_name(i)))
                .collect(),
            initial: Self::state_name(self.initial),
            transitions: self
                .transitions
                .iter()
                .map(|t| Transition {
                    from: Self::state_name(t.from),
                    to: Self::state_name(t.to),
                    event: t.event.clone(),
                    guard: None,
                    actions: t.actions.clone(),
                })
                .collect(),
        }
    }

    /// State vectors keyed by state name, for annotated printing.
    pub fn notes(&self) -> BTreeMap<String, String> {
        self.states
            .iter()
            .enumerate()
            .map(|(i, v)| (Self::state_name(i), v.to_string()))
            .collect()
    }
}

/// Chart of one object's behaviour in one annotated diagram.
pub fn synth_object_chart(asd: &AnnotatedSD, object: &str, conflicts: &[Conflict]) -> Result<FlatChart, SynthError> {
    if conflicts.iter().any(|c| c.object == object) {
        return Err(SynthError::ConflictedInput {
            sd: asd.sd.name.clone(),
            object: object.to_string(),
        });
    }
    let steps = lifeline_steps(&asd.sd, object);
    let mut chart = FlatChart::empty();
    let Some(first) = steps.first() else {
        return Ok(chart);
    };
    let mut current = chart.state_for(asd.pre(first.first().id));
    chart.initial = current;
    for step in &steps {
        let next = chart.state_for(asd.post(step.last().id));
        chart.add_transition(FlatTransition {
            from: current,
            to: next,
            event: step.event(),
            actions: step.actions(),
        });
        current = next;
    }
    Ok(chart)
}

fn merge_two(acc: &FlatChart, c: &FlatChart) -> FlatChart {
    if acc.is_empty() {
        return c.clone();
    }
    if c.is_empty() {
        return acc.clone();
    }
    let mut out = acc.clone();
    let mut map: Vec<Option<usize>> = vec![None; c.states.len()];
    let mut taken: BTreeSet<usize> = BTreeSet::new();

    let (ai, ci) = (acc.initial, c.initial);
    out.states[ai] = unify(&acc.states[ai], &c.states[ci]).unwrap_or_else(|| acc.states[ai].generalize(&c.states[ci]));
    map[ci] = Some(ai);
    taken.insert(ai);

    for (i, s) in c.states.iter().enumerate() {
        if map[i].is_some() {
            continue;
        }
        let free = |j: &usize| !taken.contains(j);
        let exact = (0..acc.states.len()).filter(free).find(|&j| acc.states[j] == *s);
        let target = exact.or_else(|| {
            (0..acc.states.len())
                .filter(free)
                .find(|&j| unify(&acc.states[j], s).is_some())
        });
        match target {
            Some(j) => {
                out.states[j] = unify(&out.states[j], s).expect("checked unifiable");
                taken.insert(j);
                map[i] = Some(j);
            }
            None => {
                out.states.push(s.clone());
                map[i] = Some(out.states.len() - 1);
            }
        }
    }
    for t in &c.transitions {
        out.add_transition(FlatTransition {
            from: map[t.from].unwrap(),
            to: map[t.to].unwrap(),
            event: t.event.clone(),
            actions: t.actions.clone(),
        });
    }
    out
}

/// Merge charts of the same object. Initial states are always merged (their
/// key becomes the join, or the common generalization when they clash);
/// every other state of a later chart is matched one-to-one with an equal,
/// else the first unifiable, unmatched state of the accumulated chart.
pub fn merge_charts(charts: &[FlatChart]) -> FlatChart {
    charts.iter().fold(FlatChart::empty(), |acc, c| merge_two(&acc, c))
}

// ---------------------------------------------------------------------------
// Hierarchy
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct Region {
    entry: usize,
    exit: usize,
    members: BTreeSet<usize>,
}

fn reach(start: usize, blocked: usize, adj: &[BTreeSet<usize>]) -> BTreeSet<usize> {
    let mut seen = BTreeSet::from([start]);
    let mut stack = vec![start];
    while let Some(n) = stack.pop() {
        if n == blocked && n != start {
            continue;
        }
        for &m in &adj[n] {
            if seen.insert(m) {
                stack.push(m);
            }
        }
    }
    seen
}

fn sese_regions(chart: &FlatChart) -> Vec<Region> {
    let n = chart.states.len();
    let mut succ = vec![BTreeSet::new(); n];
    let mut pred = vec![BTreeSet::new(); n];
    for t in &chart.transitions {
        succ[t.from].insert(t.to);
        pred[t.to].insert(t.from);
    }
    let mut out = Vec::new();
    for entry in 0..n {
        for exit in 0..n {
            if entry == exit {
                continue;
            }
            let fwd = reach(entry, exit, &succ);
            if !fwd.contains(&exit) {
                continue;
            }
            let back = reach(exit, entry, &pred);
            let members: BTreeSet<usize> = fwd.intersection(&back).copied().collect();
            if members.len() < 2 || members.len() == n {
                continue;
            }
            if members.contains(&chart.initial) && chart.initial != entry {
                continue;
            }
            let single_entry = chart
                .transitions
                .iter()
                .all(|t| members.contains(&t.from) || !members.contains(&t.to) || t.to == entry);
            let single_exit = chart
                .transitions
                .iter()
                .all(|t| !members.contains(&t.from) || members.contains(&t.to) || t.from == exit);
            if single_entry && single_exit {
                out.push(Region { entry, exit, members });
            }
        }
    }
    out
}

/// Pick a laminar family, largest regions first. A region nested in another
/// may not share its entry or exit, which keeps chains from nesting one
/// level per node.
fn choose_regions(mut candidates: Vec<Region>) -> Vec<Region> {
    candidates.sort_by(|a, b| {
        b.members
            .len()
            .cmp(&a.members.len())
            .then(a.entry.cmp(&b.entry))
            .then(a.exit.cmp(&b.exit))
    });
    let mut chosen: Vec<Region> = Vec::new();
    'next: for r in candidates {
        for c in &chosen {
            if r.members == c.members {
                continue 'next;
            }
            if r.members.is_subset(&c.members) {
                if r.entry == c.entry || r.exit == c.exit {
                    continue 'next;
                }
                if r.members.contains(&c.entry) {
                    continue 'next;
                }
            } else if !r.members.is_disjoint(&c.members) {
                continue 'next;
            }
        }
        chosen.push(r);
    }
    chosen
}

/// Wrap single-entry/single-exit regions of the transition graph into
/// composite states `C1`, `C2`, ... Flattening the result gives back the
/// flat chart.
pub fn introduce_hierarchy(chart: &FlatChart, name: &str) -> Statechart {
    if chart.is_empty() {
        return Statechart {
            name: name.to_string(),
            ..Default::default()
        };
    }
    let regions = choose_regions(sese_regions(chart));
    // parent[r] = smallest chosen region strictly containing r
    let parent: Vec<Option<usize>> = (0..regions.len())
        .map(|r| {
            (0..regions.len())
                .filter(|&q| q != r && regions[r].members.is_subset(&regions[q].members))
                .min_by_key(|&q| regions[q].members.len())
        })
        .collect();
    // innermost region of each state
    let home: Vec<Option<usize>> = (0..chart.states.len())
        .map(|s| {
            (0..regions.len())
                .filter(|&r| regions[r].members.contains(&s))
                .min_by_key(|&r| regions[r].members.len())
        })
        .collect();
    let ancestors = |mut r: Option<usize>| {
        let mut v = Vec::new();
        while let Some(x) = r {
            v.push(x);
            r = parent[x];
        }
        v
    };
    let comp_name = |r: usize| format!("C{}", r + 1);

    // Scope `None` is the root. Child of scope `scope` that contains state s.
    let child_in = |scope: Option<usize>, s: usize| -> String {
        let chain = ancestors(home[s]);
        let idx = match scope {
            None => chain.len(),
            Some(r) => chain.iter().position(|&x| x == r).expect("state inside scope"),
        };
        if idx == 0 {
            FlatChart::state_name(s)
        } else {
            comp_name(chain[idx - 1])
        }
    };

    let mut scope_transitions: BTreeMap<Option<usize>, Vec<Transition>> = BTreeMap::new();
    for t in &chart.transitions {
        let from_chain = ancestors(home[t.from]);
        let to_chain = ancestors(home[t.to]);
        let lca = from_chain.iter().copied().find(|r| to_chain.contains(r));
        scope_transitions.entry(lca).or_default().push(Transition {
            from: FlatChart::state_name(t.from),
            to: child_in(lca, t.to),
            event: t.event.clone(),
            guard: None,
            actions: t.actions.clone(),
        });
    }

    fn build(
        scope: Option<usize>,
        name: String,
        initial: String,
        regions: &[Region],
        parent: &[Option<usize>],
        home: &[Option<usize>],
        scope_transitions: &mut BTreeMap<Option<usize>, Vec<Transition>>,
    ) -> Statechart {
        let mut nodes = Vec::new();
        // Nodes in order of their first state index.
        let mut items: Vec<(usize, Option<usize>)> = Vec::new();
        for (s, h) in home.iter().enumerate() {
            if *h == scope {
                items.push((s, None));
            }
        }
        for (r, reg) in regions.iter().enumerate() {
            if parent[r] == scope {
                items.push((*reg.members.iter().next().unwrap(), Some(r)));
            }
        }
        items.sort();
        for (s, r) in items {
            match r {
                None => nodes.push(Node::Simple(FlatChart::state_name(s))),
                Some(r) => {
                    let entry = regions[r].entry;
                    let child_initial = FlatChart::state_name(entry);
                    let child = build(
                        Some(r),
                        format!("C{}", r + 1),
                        child_initial,
                        regions,
                        parent,
                        home,
                        scope_transitions,
                    );
                    nodes.push(Node::Composite(format!("C{}", r + 1), child));
                }
            }
        }
        Statechart {
            name,
            nodes,
            initial,
            transitions: scope_transitions.remove(&scope).unwrap_or_default(),
        }
    }

    let root_initial = child_in(None, chart.initial);
    build(
        None,
        name.to_string(),
        root_initial,
        &regions,
        &parent,
        &home,
        &mut scope_transitions,
    )
}

/// `(state, event)` pairs with more than one outgoing behaviour.
pub fn nondeterminism_warnings(chart: &Statechart) -> Vec<String> {
    let flat = chart.flatten();
    let mut seen: BTreeMap<(&str, Option<&str>), Vec<&Transition>> = BTreeMap::new();
    for t in &flat.transitions {
        seen.entry((t.from.as_str(), t.event.as_deref())).or_default().push(t);
    }
    seen.into_iter()
        .filter(|(_, ts)| ts.len() > 1)
        .map(|((state, event), ts)| {
            format!(
                "chart {}: state {state} has {} transitions on {}",
                chart.name,
                ts.len(),
                event.map_or("completion".to_string(), |e| format!("\"{e}\"")),
            )
        })
        .collect()
}

/// A synthesized chart with the state vector behind each simple state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthesizedChart {
    pub chart: Statechart,
    pub flat: FlatChart,
    pub notes: BTreeMap<String, String>,
}

/// Annotate every diagram, build one chart per object and SD, merge per
/// object and add hierarchy. Refuses to run on conflicting input.
pub fn synthesize(
    dt: &DomainTheory,
    sds: &[SequenceDiagram],
    cfg: &AnnotationConfig,
) -> Result<BTreeMap<String, SynthesizedChart>, SynthError> {
    let mut annotated = Vec::new();
    let mut conflicts = Vec::new();
    for sd in sds {
        let a = annotate(sd, dt, cfg).map_err(|source| SynthError::Annotate {
            sd: sd.name.clone(),
            source,
        })?;
        conflicts.extend(a.conflicts.iter().cloned());
        annotated.push(a);
    }
    if !conflicts.is_empty() {
        return Err(SynthError::Conflicts(conflicts));
    }
    let mut per_object: BTreeMap<String, Vec<FlatChart>> = BTreeMap::new();
    for a in &annotated {
        for object in &a.asd.sd.objects {
            let c = synth_object_chart(&a.asd, object, &a.conflicts)?;
            if !c.is_empty() {
                per_object.entry(object.clone()).or_default().push(c);
            }
        }
    }
    Ok(per_object
        .into_iter()
        .map(|(object, charts)| {
            let flat = merge_charts(&charts);
            let chart = introduce_hierarchy(&flat, &object);
            let notes = flat.notes();
            (object, SynthesizedChart { chart, flat, notes })
        })
        .collect())
}
