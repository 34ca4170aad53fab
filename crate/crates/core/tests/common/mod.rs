//! Generators and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use scdebug::annotator::{annotate, AnnotationConfig};
use scdebug::checker::{replay, CheckConfig};
use scdebug::dsl::{parse_domain_theory, parse_sd_with_theory};
use scdebug::model::{
    Atom, CellValue, Condition, DomainTheory, Message, MessageSpec, Operand, SequenceDiagram, StateVariable,
    StateVector, Statechart, Value, VarDomain,
};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(rel)
}

pub fn read_fixture(rel: &str) -> String {
    std::fs::read_to_string(fixture(rel)).unwrap()
}

pub fn coffee(theory: &str) -> (DomainTheory, SequenceDiagram) {
    let dt = parse_domain_theory(&read_fixture(theory)).unwrap();
    let sd = parse_sd_with_theory(&read_fixture("sd1.sd"), &dt).unwrap();
    (dt, sd)
}

/// Vector literal: `vec_of("F,F,?,?,?")`.
pub fn vec_of(text: &str) -> StateVector {
    StateVector::from_cells(
        text.split(',')
            .map(|t| match t.trim() {
                "?" => CellValue::Unknown,
                tok => CellValue::Known(Value::from_token(tok)),
            })
            .collect(),
    )
}

/// Cell-wise unification written out directly from the definition: a cell
/// pair is fine when equal or when either side is `?`; the result keeps the
/// known side.
pub fn oracle_unify(a: &StateVector, b: &StateVector) -> Option<StateVector> {
    let mut cells = Vec::new();
    for i in 0..a.len() {
        let cell = match (a.get(i), b.get(i)) {
            (CellValue::Unknown, y) => y.clone(),
            (x, CellValue::Unknown) => x.clone(),
            (x, y) if x == y => x.clone(),
            _ => return None,
        };
        cells.push(cell);
    }
    Some(StateVector::from_cells(cells))
}

// ---------------------------------------------------------------------------
// Random theories and diagrams
// ---------------------------------------------------------------------------

pub fn random_domain(rng: &mut ChaCha8Rng) -> VarDomain {
    match rng.gen_range(0..3) {
        0 => VarDomain::Boolean,
        1 => {
            let lo = rng.gen_range(-1..2);
            VarDomain::Range {
                lo,
                hi: lo + rng.gen_range(0..3),
            }
        }
        _ => {
            let n = rng.gen_range(1..4);
            VarDomain::Enum((0..n).map(|i| format!("v{i}")).collect())
        }
    }
}

fn random_condition(rng: &mut ChaCha8Rng, vars: &[StateVariable], max_atoms: usize) -> Condition {
    let mut chosen: Vec<&StateVariable> = vars.iter().collect();
    chosen.shuffle(rng);
    let n = rng.gen_range(0..=max_atoms.min(vars.len()));
    let mut atoms: Vec<Atom> = chosen[..n]
        .iter()
        .map(|v| {
            let vals = v.domain.values();
            Atom {
                var: v.name.clone(),
                value: Operand::Value(vals[rng.gen_range(0..vals.len())].clone()),
            }
        })
        .collect();
    atoms.sort_by_key(|a| vars.iter().position(|v| v.name == a.var));
    Condition { atoms }
}

/// Theory with `nvars` variables and the given context names.
pub fn random_theory(rng: &mut ChaCha8Rng, nvars: usize, contexts: &[&str], max_atoms: usize) -> DomainTheory {
    let variables: Vec<StateVariable> = (0..nvars)
        .map(|i| StateVariable {
            name: format!("V{i}"),
            domain: random_domain(rng),
            index: i,
        })
        .collect();
    let specs = contexts
        .iter()
        .map(|name| MessageSpec {
            name: name.to_string(),
            params: Vec::new(),
            pre: random_condition(rng, &variables, max_atoms),
            post: random_condition(rng, &variables, max_atoms),
        })
        .collect();
    DomainTheory { variables, specs }
}

pub fn random_sd(rng: &mut ChaCha8Rng, objects: &[&str], labels: &[&str], len: usize) -> SequenceDiagram {
    let messages = (1..=len)
        .map(|id| {
            let s = rng.gen_range(0..objects.len());
            let r = if objects.len() == 1 {
                s
            } else {
                (s + rng.gen_range(1..objects.len())) % objects.len()
            };
            Message {
                id,
                label: labels[rng.gen_range(0..labels.len())].to_string(),
                args: Vec::new(),
                sender: objects[s].to_string(),
                receiver: objects[r].to_string(),
            }
        })
        .collect();
    SequenceDiagram {
        name: "R".into(),
        objects: objects.iter().map(|s| s.to_string()).collect(),
        messages,
        no_loops: Vec::new(),
    }
}

pub fn conflict_free(sd: &SequenceDiagram, dt: &DomainTheory) -> bool {
    annotate(sd, dt, &AnnotationConfig::default()).is_ok_and(|a| a.conflicts.is_empty())
}

// ---------------------------------------------------------------------------
// Brute-force repair oracle
// ---------------------------------------------------------------------------

/// Insert candidates as defined for repair, rebuilt here from scratch.
pub fn oracle_candidates(sd: &SequenceDiagram, object: &str, chart: &Statechart, dt: &DomainTheory) -> Vec<Message> {
    let mut texts: Vec<String> = dt.specs.iter().map(|s| s.name.clone()).collect();
    let flat = chart.flatten();
    for t in &flat.transitions {
        texts.extend(t.event.iter().cloned());
        texts.extend(t.actions.iter().cloned());
    }
    let other = sd
        .objects
        .iter()
        .find(|o| *o != object)
        .cloned()
        .unwrap_or(object.to_string());
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for t in texts {
        if !seen.insert(t.clone()) {
            continue;
        }
        for (s, r) in [(other.clone(), object.to_string()), (object.to_string(), other.clone())] {
            out.push(Message {
                id: 0,
                label: t.clone(),
                args: Vec::new(),
                sender: s,
                receiver: r,
            });
        }
    }
    out
}

fn renumbered(mut msgs: Vec<Message>) -> Vec<Message> {
    for (i, m) in msgs.iter_mut().enumerate() {
        m.id = i + 1;
    }
    msgs
}

fn is_goal(sd: &SequenceDiagram, object: &str, chart: &Statechart, dt: &DomainTheory) -> bool {
    replay(sd, object, chart, dt, &CheckConfig::default()).accepted() && conflict_free(sd, dt)
}

/// Smallest number of single-message insertions/deletions (in any order,
/// breadth first) reaching an accepted, conflict-free diagram.
pub fn brute_force_min_cost(
    sd: &SequenceDiagram,
    object: &str,
    chart: &Statechart,
    dt: &DomainTheory,
    bound: usize,
) -> Option<usize> {
    let cands = oracle_candidates(sd, object, chart, dt);
    let mut frontier: Vec<Vec<Message>> = vec![sd.messages.clone()];
    let mut seen: HashSet<Vec<Message>> = frontier.iter().cloned().collect();
    let with = |msgs: &Vec<Message>| SequenceDiagram {
        messages: msgs.clone(),
        ..sd.clone()
    };
    if is_goal(sd, object, chart, dt) {
        return Some(0);
    }
    for depth in 1..=bound {
        let mut next = Vec::new();
        for msgs in &frontier {
            let mut succ = Vec::new();
            for p in 0..msgs.len() {
                let mut m = msgs.clone();
                m.remove(p);
                succ.push(renumbered(m));
            }
            for p in 0..=msgs.len() {
                for c in &cands {
                    let mut m = msgs.clone();
                    m.insert(p, c.clone());
                    succ.push(renumbered(m));
                }
            }
            for s in succ {
                if seen.insert(s.clone()) {
                    if is_goal(&with(&s), object, chart, dt) {
                        return Some(depth);
                    }
                    next.push(s);
                }
            }
        }
        frontier = next;
    }
    None
}

// ---------------------------------------------------------------------------
// Chart comparison
// ---------------------------------------------------------------------------

type Edge = (usize, usize, Option<String>, Vec<String>);

fn edges_by_index(c: &Statechart) -> (Vec<String>, BTreeSet<Edge>, usize) {
    let names: Vec<String> = c.all_node_names().into_iter().map(str::to_string).collect();
    let idx = |n: &str| names.iter().position(|x| x == n).unwrap();
    let edges = c
        .transitions
        .iter()
        .map(|t| (idx(&t.from), idx(&t.to), t.event.clone(), t.actions.clone()))
        .collect();
    (names.clone(), edges, idx(&c.initial))
}

/// Transition-graph isomorphism of two flat charts, by trying every
/// bijection consistent with labelled edges (small charts only).
pub fn isomorphic(a: &Statechart, b: &Statechart) -> bool {
    let (na, ea, ia) = edges_by_index(a);
    let (nb, eb, ib) = edges_by_index(b);
    if na.len() != nb.len() || ea.len() != eb.len() {
        return false;
    }
    let n = na.len();
    let mut map = vec![usize::MAX; n];
    let mut used = vec![false; n];
    map[ia] = ib;
    used[ib] = true;
    fn go(
        k: usize,
        n: usize,
        map: &mut Vec<usize>,
        used: &mut Vec<bool>,
        ea: &BTreeSet<Edge>,
        eb: &BTreeSet<Edge>,
    ) -> bool {
        if k == n {
            return ea
                .iter()
                .all(|(f, t, e, a)| eb.contains(&(map[*f], map[*t], e.clone(), a.clone())));
        }
        if map[k] != usize::MAX {
            return go(k + 1, n, map, used, ea, eb);
        }
        for j in 0..n {
            if !used[j] {
                map[k] = j;
                used[j] = true;
                if go(k + 1, n, map, used, ea, eb) {
                    return true;
                }
                used[j] = false;
                map[k] = usize::MAX;
            }
        }
        false
    }
    go(0, n, &mut map, &mut used, &ea, &eb)
}

/// Node-name multiset of transitions, for charts whose names must agree.
pub fn same_graph(a: &Statechart, b: &Statechart) -> bool {
    let key = |c: &Statechart| {
        let mut v: Vec<_> = c
            .transitions
            .iter()
            .map(|t| (t.from.clone(), t.to.clone(), t.event.clone(), t.actions.clone()))
            .collect();
        v.sort();
        let nodes: BTreeSet<String> = c.all_node_names().into_iter().map(str::to_string).collect();
        (nodes, v, c.initial.clone())
    };
    key(a) == key(b)
}

/// Known cells of every vector, for comparing annotation outcomes.
pub fn known_cells(a: &scdebug::annotator::Annotation) -> BTreeMap<(usize, bool, usize), String> {
    let mut out = BTreeMap::new();
    for v in a.asd.vectors() {
        for (j, c) in v.vector.cells().iter().enumerate() {
            if c.is_known() {
                out.insert(
                    (v.id.message, v.id.side == scdebug::model::Side::Post, j),
                    c.to_string(),
                );
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Mutated repair cases
// ---------------------------------------------------------------------------

pub struct RepairCase {
    pub dt: DomainTheory,
    pub original: SequenceDiagram,
    pub mutated: SequenceDiagram,
    pub chart: Statechart,
    pub applied: usize,
}

/// A conflict-free diagram, the chart synthesized for `Obj` from it, and a
/// copy of the diagram damaged by `1..=max_mutations` random insertions or
/// deletions. `None` when the drawn diagram is unusable.
pub fn repair_case(rng: &mut ChaCha8Rng, max_mutations: usize) -> Option<RepairCase> {
    let nvars = rng.gen_range(1..=2);
    let dt = random_theory(rng, nvars, &["a", "b"], 1);
    let len = rng.gen_range(2..=6);
    let original = random_sd(rng, &["Env", "Obj"], &["a", "b", "c", "d"], len);
    if !conflict_free(&original, &dt) {
        return None;
    }
    let charts =
        scdebug::synthesizer::synthesize(&dt, std::slice::from_ref(&original), &AnnotationConfig::default()).ok()?;
    let chart = charts.get("Obj")?.chart.clone();
    let cands = oracle_candidates(&original, "Obj", &chart, &dt);
    let mut msgs = original.messages.clone();
    let applied = rng.gen_range(1..=max_mutations);
    for _ in 0..applied {
        if !msgs.is_empty() && rng.gen_bool(0.5) {
            msgs.remove(rng.gen_range(0..msgs.len()));
        } else {
            let c = cands[rng.gen_range(0..cands.len())].clone();
            msgs.insert(rng.gen_range(0..=msgs.len()), c);
        }
    }
    let mutated = SequenceDiagram {
        messages: renumbered(msgs),
        ..original.clone()
    };
    Some(RepairCase {
        dt,
        original,
        mutated,
        chart,
        applied,
    })
}

/// Every single edit (deletion or candidate insertion) that repairs `sd`.
pub fn all_single_edit_fixes(
    sd: &SequenceDiagram,
    object: &str,
    chart: &Statechart,
    dt: &DomainTheory,
) -> Vec<scdebug::model::RepairEdit> {
    use scdebug::model::RepairEdit;
    let mut edits: Vec<RepairEdit> = (0..sd.messages.len()).map(|at| RepairEdit::Delete { at }).collect();
    for at in 0..=sd.messages.len() {
        for c in oracle_candidates(sd, object, chart, dt) {
            edits.push(RepairEdit::Insert { message: c, at });
        }
    }
    edits
        .into_iter()
        .filter(|e| {
            let mut s = sd.clone();
            e.apply(&mut s);
            is_goal(&s, object, chart, dt)
        })
        .collect()
}
