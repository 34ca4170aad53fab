//! Core domain types: state variables, state vectors, messages, sequence
//! diagrams, statecharts and the flat-lattice unification kernel.

use std::fmt;

/// Domain of a state variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum VarDomain {
    Boolean,
    Range { lo: i64, hi: i64 },
    Enum(Vec<String>),
}

impl VarDomain {
    pub fn contains(&self, value: &Value) -> bool {
        match (self, value) {
            (VarDomain::Boolean, Value::Bool(_)) => true,
            (VarDomain::Range { lo, hi }, Value::Int(v)) => lo <= v && v <= hi,
            (VarDomain::Enum(labels), Value::Label(l)) => labels.iter().any(|x| x == l),
            _ => false,
        }
    }

    /// Interpret a literal token in this domain.
    pub fn parse_literal(&self, token: &str) -> Option<Value> {
        let value = match self {
            VarDomain::Boolean => match token {
                "T" => Value::Bool(true),
                "F" => Value::Bool(false),
                _ => return None,
            },
            VarDomain::Range { .. } => Value::Int(token.parse().ok()?),
            VarDomain::Enum(_) => Value::Label(token.to_string()),
        };
        self.contains(&value).then_some(value)
    }

    /// All values of the domain, in declaration order.
    pub fn values(&self) -> Vec<Value> {
        match self {
            VarDomain::Boolean => vec![Value::Bool(false), Value::Bool(true)],
            VarDomain::Range { lo, hi } => (*lo..=*hi).map(Value::Int).collect(),
            VarDomain::Enum(labels) => labels.iter().cloned().map(Value::Label).collect(),
        }
    }
}

impl fmt::Display for VarDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarDomain::Boolean => f.write_str("Boolean"),
            VarDomain::Range { lo, hi } => write!(f, "{lo}..{hi}"),
            VarDomain::Enum(labels) => write!(f, "enum {{{}}}", labels.join(",")),
        }
    }
}

/// A ground value of some domain.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Label(String),
}

impl Value {
    /// Lexical reading of a literal without a domain at hand (statechart guards).
    pub fn from_token(token: &str) -> Value {
        match token {
            "T" => Value::Bool(true),
            "F" => Value::Bool(false),
            _ => match token.parse() {
                Ok(i) => Value::Int(i),
                Err(_) => Value::Label(token.to_string()),
            },
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(true) => f.write_str("T"),
            Value::Bool(false) => f.write_str("F"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Label(l) => f.write_str(l),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateVariable {
    pub name: String,
    pub domain: VarDomain,
    pub index: usize,
}

/// One cell of a state vector: a known value or `?`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CellValue {
    Unknown,
    Known(Value),
}

impl CellValue {
    pub fn is_known(&self) -> bool {
        matches!(self, CellValue::Known(_))
    }
}

impl fmt::Display for CellValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellValue::Unknown => f.write_str("?"),
            CellValue::Known(v) => v.fmt(f),
        }
    }
}

/// Cells unify when they are equal or one of them is `?`.
pub fn compatible(a: &CellValue, b: &CellValue) -> bool {
    match (a, b) {
        (CellValue::Unknown, _) | (_, CellValue::Unknown) => true,
        (CellValue::Known(x), CellValue::Known(y)) => x == y,
    }
}

/// Tuple of cell values, one per declared state variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateVector {
    cells: Vec<CellValue>,
}

impl StateVector {
    pub fn unknown(len: usize) -> Self {
        StateVector {
            cells: vec![CellValue::Unknown; len],
        }
    }

    pub fn from_cells(cells: Vec<CellValue>) -> Self {
        StateVector { cells }
    }

    pub fn cells(&self) -> &[CellValue] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn get(&self, index: usize) -> &CellValue {
        &self.cells[index]
    }

    pub(crate) fn set(&mut self, index: usize, value: CellValue) {
        self.cells[index] = value;
    }

    pub fn known_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_known()).count()
    }

    /// Does every known cell of `self` agree with `other`?
    pub fn compatible_with(&self, other: &StateVector) -> bool {
        self.cells.len() == other.cells.len() && self.cells.iter().zip(&other.cells).all(|(a, b)| compatible(a, b))
    }

    /// Keep only the cells on which both vectors agree; disagreements and
    /// unknowns become `?`.
    pub fn generalize(&self, other: &StateVector) -> StateVector {
        assert_eq!(self.len(), other.len(), "state vector length mismatch");
        StateVector {
            cells: self
                .cells
                .iter()
                .zip(&other.cells)
                .map(|(a, b)| if a == b { a.clone() } else { CellValue::Unknown })
                .collect(),
        }
    }
}

impl fmt::Display for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("<")?;
        for (i, c) in self.cells.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            c.fmt(f)?;
        }
        f.write_str(">")
    }
}

/// Pointwise join over the flat lattice `? < v`. `None` when some pair of
/// known cells disagree.
pub fn unify(a: &StateVector, b: &StateVector) -> Option<StateVector> {
    assert_eq!(a.len(), b.len(), "state vector length mismatch");
    a.cells
        .iter()
        .zip(&b.cells)
        .map(|(x, y)| match (x, y) {
            (CellValue::Unknown, y) => Some(y.clone()),
            (x, CellValue::Unknown) => Some(x.clone()),
            (x, y) if x == y => Some(x.clone()),
            _ => None,
        })
        .collect::<Option<Vec<_>>>()
        .map(StateVector::from_cells)
}

/// Right-hand side of a `var = value` atom.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Operand {
    Value(Value),
    Param(String),
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Value(v) => v.fmt(f),
            Operand::Param(p) => f.write_str(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    pub var: String,
    pub value: Operand,
}

/// Conjunction of `var = value` atoms.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Condition {
    pub atoms: Vec<Atom>,
}

impl Condition {
    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, a) in self.atoms.iter().enumerate() {
            if i > 0 {
                f.write_str(" and ")?;
            }
            write!(f, "{} = {}", a.var, a.value)?;
        }
        Ok(())
    }
}

/// Pre/post specification of one message (a `context` block).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageSpec {
    pub name: String,
    pub params: Vec<(String, VarDomain)>,
    pub pre: Condition,
    pub post: Condition,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DomainTheory {
    pub variables: Vec<StateVariable>,
    pub specs: Vec<MessageSpec>,
}

/// Key used to match message labels against context names: ASCII case is
/// ignored and internal whitespace collapsed.
pub fn label_key(label: &str) -> String {
    label
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_ascii_lowercase()
}

impl DomainTheory {
    pub fn variable(&self, name: &str) -> Option<&StateVariable> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn spec_for(&self, label: &str) -> Option<&MessageSpec> {
        let key = label_key(label);
        self.specs.iter().find(|s| label_key(&s.name) == key)
    }

    pub fn width(&self) -> usize {
        self.variables.len()
    }
}

/// A message arrow of a sequence diagram. `id` is its 1-based position.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Message {
    pub id: usize,
    pub label: String,
    pub args: Vec<String>,
    pub sender: String,
    pub receiver: String,
}

impl Message {
    /// Label plus argument list, e.g. `Enter Selection(Espresso)`.
    pub fn text(&self) -> String {
        if self.args.is_empty() {
            self.label.clone()
        } else {
            format!("{}({})", self.label, self.args.join(","))
        }
    }
}

/// `assume no-loop i j`: no state inside messages `i..=j` is revisited, so
/// no vectors of those messages may be unified with each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NoLoop {
    pub first: usize,
    pub last: usize,
}

impl NoLoop {
    pub fn new(a: usize, b: usize) -> Self {
        NoLoop {
            first: a.min(b),
            last: a.max(b),
        }
    }

    pub fn covers(&self, a: usize, b: usize) -> bool {
        (self.first..=self.last).contains(&a) && (self.first..=self.last).contains(&b)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct SequenceDiagram {
    pub name: String,
    pub objects: Vec<String>,
    pub messages: Vec<Message>,
    pub no_loops: Vec<NoLoop>,
}

impl SequenceDiagram {
    pub fn message(&self, id: usize) -> Option<&Message> {
        id.checked_sub(1).and_then(|i| self.messages.get(i))
    }

    pub fn has_object(&self, name: &str) -> bool {
        self.objects.iter().any(|o| o == name)
    }

    /// Reassign ids 1..n after an edit.
    pub fn renumber(&mut self) {
        for (i, m) in self.messages.iter_mut().enumerate() {
            m.id = i + 1;
        }
    }

    /// Messages the object takes part in, in diagram order.
    pub fn lifeline<'a>(&'a self, object: &'a str) -> impl Iterator<Item = &'a Message> + 'a {
        self.messages
            .iter()
            .filter(move |m| m.sender == object || m.receiver == object)
    }
}

/// Which of a message's two state vectors: the one before it is sent or the
/// one after it is received.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Pre,
    Post,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Pre => "pre",
            Side::Post => "post",
        }
    }
}

/// Stable identity of a state vector inside an annotated diagram. The pre
/// vector sits on the sender's lifeline, the post vector on the receiver's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VectorId {
    pub message: usize,
    pub side: Side,
}

impl VectorId {
    pub fn pre(message: usize) -> Self {
        VectorId {
            message,
            side: Side::Pre,
        }
    }

    pub fn post(message: usize) -> Self {
        VectorId {
            message,
            side: Side::Post,
        }
    }

    /// Object at whose message end this vector is attached.
    pub fn object<'a>(&self, sd: &'a SequenceDiagram) -> Option<&'a str> {
        sd.message(self.message).map(|m| match self.side {
            Side::Pre => m.sender.as_str(),
            Side::Post => m.receiver.as_str(),
        })
    }
}

impl fmt::Display for VectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Msg {} {}", self.message, self.side.as_str())
    }
}

/// Where the value of one cell came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Provenance {
    /// Never constrained.
    Initial,
    /// The pre- or postcondition of the message itself.
    FromSpec { message: usize, side: Side },
    /// Copied along the frame axiom from the same cell of `source`.
    Frame { source: VectorId },
    /// Grounded by unifying with `with`.
    Unified { with: VectorId },
}

/// A state vector of an annotated diagram together with per-cell provenance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedVector {
    pub id: VectorId,
    pub vector: StateVector,
    pub provenance: Vec<Provenance>,
}

/// A sequence diagram whose messages carry pre/post state vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedSD {
    pub sd: SequenceDiagram,
    vectors: Vec<AnnotatedVector>,
}

impl AnnotatedSD {
    pub(crate) fn new(sd: SequenceDiagram, vectors: Vec<AnnotatedVector>) -> Self {
        debug_assert_eq!(vectors.len(), 2 * sd.messages.len());
        AnnotatedSD { sd, vectors }
    }

    fn slot(id: VectorId) -> usize {
        2 * (id.message - 1) + usize::from(id.side == Side::Post)
    }

    pub fn vector(&self, id: VectorId) -> &AnnotatedVector {
        &self.vectors[Self::slot(id)]
    }

    pub(crate) fn vector_mut(&mut self, id: VectorId) -> &mut AnnotatedVector {
        &mut self.vectors[Self::slot(id)]
    }

    pub fn pre(&self, message: usize) -> &StateVector {
        &self.vector(VectorId::pre(message)).vector
    }

    pub fn post(&self, message: usize) -> &StateVector {
        &self.vector(VectorId::post(message)).vector
    }

    /// All vectors in id order: pre 1, post 1, pre 2, ...
    pub fn vectors(&self) -> &[AnnotatedVector] {
        &self.vectors
    }

    pub fn width(&self) -> usize {
        self.vectors.first().map_or(0, |v| v.vector.len())
    }
}

/// One hop of a conflict explanation: cell `cell` of `vector` got its value
/// through `provenance`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DerivationStep {
    pub vector: VectorId,
    pub cell: usize,
    pub provenance: Provenance,
    /// Final contents of `vector`.
    pub value: StateVector,
    /// Text of the message the vector belongs to.
    pub message: String,
}

/// Adjacent vectors that disagree on a known value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conflict {
    pub sd: String,
    pub object: String,
    pub after: Message,
    pub before: Message,
    pub variable: StateVariable,
    pub value_after: CellValue,
    pub value_before: CellValue,
    pub vector_after: StateVector,
    pub vector_before: StateVector,
    /// Provenance chain of the `after` cell followed by that of the `before`
    /// cell, each starting at the conflicting vector and walking back.
    pub derivation: Vec<DerivationStep>,
}

impl Conflict {
    /// The unification that fed the conflicting value, if any.
    pub fn unifier(&self) -> Option<(VectorId, VectorId)> {
        self.derivation.iter().find_map(|s| match s.provenance {
            Provenance::Unified { with } => Some((s.vector.min(with), s.vector.max(with))),
            _ => None,
        })
    }
}

/// Transition `from -> to : event [guard] / actions`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Transition {
    pub from: String,
    pub to: String,
    /// `None` for a completion transition.
    pub event: Option<String>,
    pub guard: Option<Condition>,
    pub actions: Vec<String>,
}

impl Transition {
    /// `e[c]/a1,a2` label.
    pub fn label(&self) -> String {
        let mut s = self.event.clone().unwrap_or_default();
        if let Some(g) = &self.guard {
            s.push_str(&format!("[{g}]"));
        }
        if !self.actions.is_empty() {
            s.push('/');
            s.push_str(&self.actions.join(","));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Node {
    Simple(String),
    Composite(String, Statechart),
}

impl Node {
    pub fn name(&self) -> &str {
        match self {
            Node::Simple(n) | Node::Composite(n, _) => n,
        }
    }
}

/// Hierarchical state machine. Transitions are stored in the innermost chart
/// that contains both endpoints; endpoints may name nodes at any depth.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Statechart {
    pub name: String,
    pub nodes: Vec<Node>,
    pub initial: String,
    pub transitions: Vec<Transition>,
}

impl Statechart {
    /// Names of every node at any depth, in declaration order.
    pub fn all_node_names(&self) -> Vec<&str> {
        let mut out = Vec::new();
        fn walk<'a>(c: &'a Statechart, out: &mut Vec<&'a str>) {
            for n in &c.nodes {
                out.push(n.name());
                if let Node::Composite(_, child) = n {
                    walk(child, out);
                }
            }
        }
        walk(self, &mut out);
        out
    }

    pub fn find_node(&self, name: &str) -> Option<&Node> {
        for n in &self.nodes {
            if n.name() == name {
                return Some(n);
            }
            if let Node::Composite(_, child) = n {
                if let Some(found) = child.find_node(name) {
                    return Some(found);
                }
            }
        }
        None
    }

    /// Leaf reached by entering `name`: the node itself when simple, otherwise
    /// its initial descendant.
    pub fn entry_leaf<'a>(&'a self, name: &'a str) -> Option<&'a str> {
        match self.find_node(name)? {
            Node::Simple(n) => Some(n),
            Node::Composite(_, child) => child.entry_leaf(&child.initial),
        }
    }

    /// Leaves contained in `name` (the node itself when simple).
    pub fn leaves_of(&self, name: &str) -> Vec<&str> {
        fn collect<'a>(c: &'a Statechart, out: &mut Vec<&'a str>) {
            for n in &c.nodes {
                match n {
                    Node::Simple(s) => out.push(s),
                    Node::Composite(_, child) => collect(child, out),
                }
            }
        }
        match self.find_node(name) {
            Some(Node::Simple(s)) => vec![s.as_str()],
            Some(Node::Composite(_, child)) => {
                let mut out = Vec::new();
                collect(child, &mut out);
                out
            }
            None => Vec::new(),
        }
    }

    /// Equivalent chart without composite nodes: entering a composite enters
    /// its initial leaf, leaving a composite leaves from each of its leaves.
    pub fn flatten(&self) -> Statechart {
        let mut leaves = Vec::new();
        let mut transitions = Vec::new();
        fn walk(root: &Statechart, c: &Statechart, leaves: &mut Vec<Node>, ts: &mut Vec<Transition>) {
            for n in &c.nodes {
                match n {
                    Node::Simple(s) => leaves.push(Node::Simple(s.clone())),
                    Node::Composite(_, child) => walk(root, child, leaves, ts),
                }
            }
            for t in &c.transitions {
                let Some(to) = root.entry_leaf(&t.to) else { continue };
                for from in root.leaves_of(&t.from) {
                    ts.push(Transition {
                        from: from.to_string(),
                        to: to.to_string(),
                        ..t.clone()
                    });
                }
            }
        }
        walk(self, self, &mut leaves, &mut transitions);
        Statechart {
            name: self.name.clone(),
            nodes: leaves,
            initial: self.entry_leaf(&self.initial).unwrap_or(&self.initial).to_string(),
            transitions,
        }
    }
}

/// One step of a minimal-edit repair of a sequence diagram.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RepairEdit {
    Insert { message: Message, at: usize },
    Delete { at: usize },
}

impl RepairEdit {
    pub fn position(&self) -> usize {
        match self {
            RepairEdit::Insert { at, .. } | RepairEdit::Delete { at } => *at,
        }
    }

    /// Apply to `sd` (0-based positions) and renumber.
    pub fn apply(&self, sd: &mut SequenceDiagram) {
        match self {
            RepairEdit::Insert { message, at } => sd.messages.insert(*at, message.clone()),
            RepairEdit::Delete { at } => {
                sd.messages.remove(*at);
            }
        }
        sd.renumber();
    }
}
