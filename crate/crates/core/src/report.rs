//! Text and JSON reports, and DOT export of statecharts.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde_json::{json, Value as Json};

use crate::annotator::Annotation;
use crate::checker::{CheckResult, NoRepairWithinBound, RepairResult, StepOutcome, Verdict};
use crate::model::{
    Conflict, DerivationStep, Message, Node, Provenance, RepairEdit, SequenceDiagram, Side, Statechart, VectorId,
};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationSummary {
    pub sd: String,
    pub messages: usize,
    pub unifications: usize,
    /// Messages without a matching context in the theory.
    pub unspecified: Vec<usize>,
}

impl AnnotationSummary {
    pub fn of(a: &Annotation, dt: &crate::model::DomainTheory) -> Self {
        AnnotationSummary {
            sd: a.asd.sd.name.clone(),
            messages: a.asd.sd.messages.len(),
            unifications: a.trace.len(),
            unspecified: a
                .asd
                .sd
                .messages
                .iter()
                .filter(|m| dt.spec_for(&m.label).is_none())
                .map(|m| m.id)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ReportBundle {
    pub conflicts: Vec<Conflict>,
    pub annotations: Vec<AnnotationSummary>,
    pub checks: Vec<CheckResult>,
    /// Original diagrams of `checks`, for rendering repairs as diffs.
    pub sds: Vec<SequenceDiagram>,
    pub warnings: Vec<String>,
}

fn side_word(side: Side) -> &'static str {
    match side {
        Side::Pre => "before",
        Side::Post => "after",
    }
}

fn vector_line(id: VectorId, label: &str, vector: &dyn std::fmt::Display) -> String {
    format!(
        "statevector {} \"{label}\" = {vector} [Msg {}]",
        side_word(id.side),
        id.message
    )
}

/// Vectors named in the explanation: every `after` vector on the two
/// provenance chains except the conflicting one, in chain order.
pub fn explanation_vectors(c: &Conflict) -> Vec<&DerivationStep> {
    let mut seen = BTreeSet::new();
    c.derivation
        .iter()
        .filter(|s| s.vector.side == Side::Post && s.vector != VectorId::post(c.after.id))
        .filter(|s| seen.insert(s.vector))
        .collect()
}

/// Spec origins of the two conflicting values.
fn origins(c: &Conflict) -> Vec<&DerivationStep> {
    c.derivation
        .iter()
        .filter(|s| matches!(s.provenance, Provenance::FromSpec { .. }))
        .collect()
}

fn render_conflict(out: &mut String, c: &Conflict) {
    writeln!(out, "Conflict in {}: Object {}", c.sd, c.object).unwrap();
    writeln!(
        out,
        " {}",
        vector_line(VectorId::post(c.after.id), &c.after.text(), &c.vector_after)
    )
    .unwrap();
    writeln!(
        out,
        " {}",
        vector_line(VectorId::pre(c.before.id), &c.before.text(), &c.vector_before)
    )
    .unwrap();
    writeln!(out, "  conflict in variable \"{}\"", c.variable.name).unwrap();
    let unifier = c.unifier();
    if unifier.is_some() {
        writeln!(out, "  conflict occurred as consequence of unification of").unwrap();
    } else {
        writeln!(out, "  conflict follows from the specifications along").unwrap();
    }
    for s in explanation_vectors(c) {
        writeln!(out, "   {}", vector_line(s.vector, &s.message, &s.value)).unwrap();
    }
    for s in origins(c) {
        if let Provenance::FromSpec { message, side } = s.provenance {
            let cond = if side == Side::Pre {
                "precondition"
            } else {
                "postcondition"
            };
            writeln!(
                out,
                "  {} = {} comes from the {cond} of \"{}\" [Msg {message}]",
                c.variable.name,
                s.value.get(s.cell),
                s.message
            )
            .unwrap();
        }
    }
    if let Some((a, b)) = unifier {
        writeln!(
            out,
            "  hint: the unifier joins {a} and {b}; rule the loop out with --no-loop {}:{} or fix the domain theory",
            a.message, b.message
        )
        .unwrap();
    }
}

fn edit_diff(sd: &SequenceDiagram, edits: &[RepairEdit]) -> Vec<(char, Message)> {
    let mut lines: Vec<(char, Message)> = sd.messages.iter().map(|m| (' ', m.clone())).collect();
    for e in edits {
        // index among lines not marked as deleted
        let live: Vec<usize> = (0..lines.len()).filter(|&i| lines[i].0 != '-').collect();
        match e {
            RepairEdit::Delete { at } => lines[live[*at]].0 = '-',
            RepairEdit::Insert { message, at } => {
                let idx = live.get(*at).copied().unwrap_or(lines.len());
                lines.insert(idx, ('+', message.clone()));
            }
        }
    }
    lines
}

fn render_repair(out: &mut String, sd: Option<&SequenceDiagram>, r: &RepairResult) {
    writeln!(out, "  repair with {} edit(s):", r.cost).unwrap();
    let Some(sd) = sd else { return };
    writeln!(out, "  --- {}", sd.name).unwrap();
    writeln!(out, "  +++ {} (repaired)", sd.name).unwrap();
    for (mark, m) in edit_diff(sd, &r.edits) {
        writeln!(out, "  {mark}msg {} -> {} : {}", m.sender, m.receiver, m.text()).unwrap();
    }
}

fn render_no_repair(out: &mut String, e: &NoRepairWithinBound) {
    writeln!(
        out,
        "  no repair within {} edit(s) ({} candidate diagrams examined)",
        e.max_edits, e.explored
    )
    .unwrap();
}

fn render_check(out: &mut String, bundle: &ReportBundle, c: &CheckResult) {
    match c.trace.verdict {
        Verdict::Accepted => {
            writeln!(
                out,
                "Check {} / {}: accepted ({} steps)",
                c.sd,
                c.object,
                c.trace.steps.len()
            )
            .unwrap();
        }
        Verdict::RejectedAt(k) => {
            let step = &c.trace.steps[k];
            let reason = match &step.outcome {
                StepOutcome::Mismatch(r) => r.as_str(),
                StepOutcome::Matched { .. } => "",
            };
            writeln!(
                out,
                "Check {} / {}: rejected at step {} [Msg {}]: {reason}",
                c.sd,
                c.object,
                k + 1,
                step.message
            )
            .unwrap();
            let sd = bundle.sds.iter().find(|s| s.name == c.sd);
            match &c.repair {
                Some(Ok(r)) => render_repair(out, sd, r),
                Some(Err(e)) => render_no_repair(out, e),
                None => {}
            }
        }
    }
}

fn summary_line(bundle: &ReportBundle) -> String {
    let messages: usize = bundle.annotations.iter().map(|a| a.messages).sum();
    let rejected = bundle.checks.iter().filter(|c| !c.trace.accepted()).count();
    let mut s = format!(
        "Summary: {} diagram(s), {} message(s), {} conflict(s)",
        bundle.annotations.len(),
        messages,
        bundle.conflicts.len()
    );
    if !bundle.checks.is_empty() {
        write!(s, ", {} check(s), {} rejected", bundle.checks.len(), rejected).unwrap();
    }
    s
}

pub fn render_text(bundle: &ReportBundle) -> String {
    let mut out = String::new();
    for c in &bundle.conflicts {
        render_conflict(&mut out, c);
        out.push('\n');
    }
    for c in &bundle.checks {
        render_check(&mut out, bundle, c);
    }
    if !bundle.checks.is_empty() {
        out.push('\n');
    }
    for w in &bundle.warnings {
        writeln!(out, "warning: {w}").unwrap();
    }
    if bundle.conflicts.is_empty() {
        writeln!(out, "No conflicts found.").unwrap();
    }
    writeln!(out, "{}", summary_line(bundle)).unwrap();
    out
}

fn vid(id: VectorId) -> Json {
    json!({"msg": id.message, "side": id.side.as_str()})
}

fn msg_json(m: &Message, vector: &str) -> Json {
    json!({"id": m.id, "label": m.text(), "vector": vector})
}

fn conflict_json(c: &Conflict) -> Json {
    let derivation: Vec<Json> = c
        .derivation
        .iter()
        .map(|s| {
            let vector = s.value.to_string();
            let (via, source) = match s.provenance {
                Provenance::Initial => ("initial", Json::Null),
                Provenance::FromSpec { .. } => ("spec", Json::Null),
                Provenance::Frame { source } => ("frame", vid(source)),
                Provenance::Unified { with } => ("unified", vid(with)),
            };
            json!({"msg": s.vector.message, "side": s.vector.side.as_str(), "vector": vector, "via": via, "source": source})
        })
        .collect();
    json!({
        "sd": c.sd,
        "object": c.object,
        "afterMsg": msg_json(&c.after, &c.vector_after.to_string()),
        "beforeMsg": msg_json(&c.before, &c.vector_before.to_string()),
        "variable": c.variable.name,
        "valueAfter": c.value_after.to_string(),
        "valueBefore": c.value_before.to_string(),
        "derivation": derivation,
        "unifier": c.unifier().map_or(Json::Null, |(a, b)| json!([vid(a), vid(b)])),
    })
}

fn edit_json(e: &RepairEdit) -> Json {
    match e {
        RepairEdit::Delete { at } => json!({"op": "delete", "at": at}),
        RepairEdit::Insert { message, at } => json!({
            "op": "insert",
            "at": at,
            "message": {"sender": message.sender, "receiver": message.receiver, "label": message.text()},
        }),
    }
}

fn check_json(c: &CheckResult) -> Json {
    let repair = match &c.repair {
        None => Json::Null,
        Some(Ok(r)) => json!({
            "found": true,
            "cost": r.cost,
            "edits": r.edits.iter().map(edit_json).collect::<Vec<_>>(),
        }),
        Some(Err(e)) => json!({"found": false, "maxEdits": e.max_edits, "explored": e.explored}),
    };
    let (verdict, at) = match c.trace.verdict {
        Verdict::Accepted => ("accepted", Json::Null),
        Verdict::RejectedAt(k) => ("rejected", json!(k)),
    };
    json!({
        "sd": c.sd,
        "object": c.object,
        "verdict": verdict,
        "rejectedAt": at,
        "steps": c.trace.steps.len(),
        "repair": repair,
    })
}

pub fn render_json_value(bundle: &ReportBundle) -> Json {
    let messages: usize = bundle.annotations.iter().map(|a| a.messages).sum();
    json!({
        "schemaVersion": SCHEMA_VERSION,
        "conflicts": bundle.conflicts.iter().map(conflict_json).collect::<Vec<_>>(),
        "annotations": bundle.annotations.iter().map(|a| json!({
            "sd": a.sd,
            "messages": a.messages,
            "unifications": a.unifications,
            "unspecified": a.unspecified,
        })).collect::<Vec<_>>(),
        "checks": bundle.checks.iter().map(check_json).collect::<Vec<_>>(),
        "warnings": bundle.warnings,
        "summary": {
            "sds": bundle.annotations.len(),
            "messages": messages,
            "conflicts": bundle.conflicts.len(),
            "rejected": bundle.checks.iter().filter(|c| !c.trace.accepted()).count(),
        },
    })
}

/// Pretty JSON with keys in sorted order.
pub fn render_json(bundle: &ReportBundle) -> String {
    let mut s = serde_json::to_string_pretty(&render_json_value(bundle)).expect("serializable");
    s.push('\n');
    s
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn cluster_id(name: &str) -> String {
    let clean: String = name
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { '_' })
        .collect();
    format!("cluster_{clean}")
}

/// DOT graph: composites become clusters, each (sub)chart's initial state
/// gets a point node, edges carry `e[c]/a` labels.
pub fn export_dot(chart: &Statechart) -> String {
    let mut out = String::new();
    writeln!(out, "digraph {} {{", quote(&chart.name)).unwrap();
    writeln!(out, "  compound=true;").unwrap();
    writeln!(out, "  node [shape=box, style=rounded];").unwrap();
    let mut edges = String::new();
    let mut counter = 0usize;
    fn edge_to(root: &Statechart, to: &str) -> (String, Option<String>) {
        match root.find_node(to) {
            Some(Node::Composite(..)) => (root.entry_leaf(to).unwrap_or(to).to_string(), Some(cluster_id(to))),
            _ => (to.to_string(), None),
        }
    }
    fn walk(
        root: &Statechart,
        c: &Statechart,
        depth: usize,
        counter: &mut usize,
        out: &mut String,
        edges: &mut String,
    ) {
        let ind = "  ".repeat(depth);
        let init = format!("__init{}", *counter);
        *counter += 1;
        writeln!(out, "{ind}{init} [shape=point];").unwrap();
        for n in &c.nodes {
            match n {
                Node::Simple(name) => writeln!(out, "{ind}{};", quote(name)).unwrap(),
                Node::Composite(name, child) => {
                    writeln!(out, "{ind}subgraph {} {{", cluster_id(name)).unwrap();
                    writeln!(out, "{ind}  label={};", quote(name)).unwrap();
                    walk(root, child, depth + 1, counter, out, edges);
                    writeln!(out, "{ind}}}").unwrap();
                }
            }
        }
        let (target, lhead) = edge_to(root, &c.initial);
        match lhead {
            Some(l) => writeln!(out, "{ind}{init} -> {} [lhead={l}];", quote(&target)).unwrap(),
            None => writeln!(out, "{ind}{init} -> {};", quote(&target)).unwrap(),
        }
        for t in &c.transitions {
            let (target, lhead) = edge_to(root, &t.to);
            let from = root.entry_leaf(&t.from).unwrap_or(&t.from);
            let mut attrs = format!("label={}", quote(&t.label()));
            if let Some(l) = lhead {
                write!(attrs, ", lhead={l}").unwrap();
            }
            if matches!(root.find_node(&t.from), Some(Node::Composite(..))) {
                write!(attrs, ", ltail={}", cluster_id(&t.from)).unwrap();
            }
            writeln!(edges, "  {} -> {} [{attrs}];", quote(from), quote(&target)).unwrap();
        }
    }
    walk(chart, chart, 1, &mut counter, &mut out, &mut edges);
    out.push_str(&edges);
    out.push_str("}\n");
    out
}
