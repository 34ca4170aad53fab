//! Python bindings: `import scdebug`.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;

use scdebug::annotator::{annotate as annotate_sd, AnnotationConfig};
use scdebug::checker::{self, CheckConfig};
use scdebug::model::{self, NoLoop, RepairEdit};
use scdebug::report::{self, AnnotationSummary, ReportBundle};
use scdebug::{cli, dsl, synthesizer};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(frozen, from_py_object, name = "DomainTheory", module = "scdebug")]
#[derive(Clone)]
pub struct PyDomainTheory {
    inner: model::DomainTheory,
}

#[pymethods]
impl PyDomainTheory {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        dsl::parse_domain_theory(text)
            .map(|inner| Self { inner })
            .map_err(value_error)
    }

    /// Variable names in vector order.
    #[getter]
    fn variables(&self) -> Vec<String> {
        self.inner.variables.iter().map(|v| v.name.clone()).collect()
    }

    #[getter]
    fn contexts(&self) -> Vec<String> {
        self.inner.specs.iter().map(|s| s.name.clone()).collect()
    }

    fn __str__(&self) -> String {
        dsl::print_domain_theory(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "<DomainTheory {} variables, {} contexts>",
            self.inner.variables.len(),
            self.inner.specs.len()
        )
    }
}

#[pyclass(frozen, from_py_object, name = "SequenceDiagram", module = "scdebug")]
#[derive(Clone)]
pub struct PySequenceDiagram {
    inner: model::SequenceDiagram,
}

#[pymethods]
impl PySequenceDiagram {
    /// Parse a diagram; with a theory, argument counts are checked too.
    #[staticmethod]
    #[pyo3(signature = (text, theory=None))]
    fn parse(text: &str, theory: Option<&PyDomainTheory>) -> PyResult<Self> {
        let r = match theory {
            Some(t) => dsl::parse_sd_with_theory(text, &t.inner),
            None => dsl::parse_sd(text),
        };
        r.map(|inner| Self { inner }).map_err(value_error)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn objects(&self) -> Vec<String> {
        self.inner.objects.clone()
    }

    /// `(id, sender, receiver, text)` per message.
    #[getter]
    fn messages(&self) -> Vec<(usize, String, String, String)> {
        self.inner
            .messages
            .iter()
            .map(|m| (m.id, m.sender.clone(), m.receiver.clone(), m.text()))
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.messages.len()
    }

    fn __str__(&self) -> String {
        dsl::print_sd(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "<SequenceDiagram {} with {} messages>",
            self.inner.name,
            self.inner.messages.len()
        )
    }
}

#[pyclass(frozen, from_py_object, name = "Statechart", module = "scdebug")]
#[derive(Clone)]
pub struct PyStatechart {
    inner: model::Statechart,
}

#[pymethods]
impl PyStatechart {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        dsl::parse_sc(text).map(|inner| Self { inner }).map_err(value_error)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn states(&self) -> Vec<String> {
        self.inner.all_node_names().into_iter().map(str::to_string).collect()
    }

    /// The same chart without composite states.
    fn flatten(&self) -> Self {
        Self {
            inner: self.inner.flatten(),
        }
    }

    fn to_dot(&self) -> String {
        report::export_dot(&self.inner)
    }

    fn __str__(&self) -> String {
        dsl::print_sc(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "<Statechart {} with {} transitions>",
            self.inner.name,
            self.inner.transitions.len()
        )
    }
}

/// One conflict, flattened to plain fields.
#[pyclass(frozen, get_all, name = "Conflict", module = "scdebug")]
pub struct PyConflict {
    sd: String,
    object: String,
    variable: String,
    after_msg: usize,
    before_msg: usize,
    value_after: String,
    value_before: String,
    vector_after: String,
    vector_before: String,
    /// `(first, second)` as `(msg, side)` pairs, if a unifier is involved.
    unifier: Option<((usize, String), (usize, String))>,
    /// Message ids along the derivation, in report order.
    derivation: Vec<usize>,
}

#[pymethods]
impl PyConflict {
    fn __repr__(&self) -> String {
        format!(
            "<Conflict {} at {} on {}: Msg {} {} vs Msg {} {}>",
            self.sd, self.object, self.variable, self.after_msg, self.value_after, self.before_msg, self.value_before
        )
    }
}

fn side_pair(id: model::VectorId) -> (usize, String) {
    (id.message, id.side.as_str().to_string())
}

#[pyclass(frozen, name = "Annotation", module = "scdebug")]
pub struct PyAnnotation {
    inner: scdebug::annotator::Annotation,
    summary: AnnotationSummary,
}

impl PyAnnotation {
    fn bundle(&self) -> ReportBundle {
        ReportBundle {
            conflicts: self.inner.conflicts.clone(),
            annotations: vec![self.summary.clone()],
            ..Default::default()
        }
    }
}

#[pymethods]
impl PyAnnotation {
    #[getter]
    fn conflicts(&self) -> Vec<PyConflict> {
        self.inner
            .conflicts
            .iter()
            .map(|c| PyConflict {
                sd: c.sd.clone(),
                object: c.object.clone(),
                variable: c.variable.name.clone(),
                after_msg: c.after.id,
                before_msg: c.before.id,
                value_after: c.value_after.to_string(),
                value_before: c.value_before.to_string(),
                vector_after: c.vector_after.to_string(),
                vector_before: c.vector_before.to_string(),
                unifier: c.unifier().map(|(a, b)| (side_pair(a), side_pair(b))),
                derivation: c.derivation.iter().map(|s| s.vector.message).collect(),
            })
            .collect()
    }

    /// `(msg, side, vector)` for every annotated vector, in chain order.
    fn vectors(&self) -> Vec<(usize, String, String)> {
        self.inner
            .asd
            .vectors()
            .iter()
            .map(|v| (v.id.message, v.id.side.as_str().to_string(), v.vector.to_string()))
            .collect()
    }

    #[getter]
    fn unifications(&self) -> usize {
        self.inner.trace.len()
    }

    fn report_text(&self) -> String {
        report::render_text(&self.bundle())
    }

    fn report_json(&self) -> String {
        report::render_json(&self.bundle())
    }
}

/// Annotate a diagram. `no_loops` holds `(i, j)` message ranges assumed
/// loop-free.
#[pyfunction]
#[pyo3(signature = (theory, sd, no_loops=Vec::new()))]
fn annotate(theory: &PyDomainTheory, sd: &PySequenceDiagram, no_loops: Vec<(usize, usize)>) -> PyResult<PyAnnotation> {
    let cfg = AnnotationConfig {
        no_loops: no_loops.into_iter().map(|(a, b)| NoLoop::new(a, b)).collect(),
        ..Default::default()
    };
    let inner = annotate_sd(&sd.inner, &theory.inner, &cfg).map_err(value_error)?;
    let summary = AnnotationSummary::of(&inner, &theory.inner);
    Ok(PyAnnotation { inner, summary })
}

/// One chart per object, keyed by object name.
#[pyfunction]
fn synthesize(theory: &PyDomainTheory, sds: Vec<PySequenceDiagram>) -> PyResult<BTreeMap<String, PyStatechart>> {
    let sds: Vec<model::SequenceDiagram> = sds.into_iter().map(|s| s.inner).collect();
    let charts = synthesizer::synthesize(&theory.inner, &sds, &AnnotationConfig::default()).map_err(value_error)?;
    Ok(charts
        .into_iter()
        .map(|(k, c)| (k, PyStatechart { inner: c.chart }))
        .collect())
}

/// Replay `sd` for `object`; returns `(accepted, rejected_at_step)`.
#[pyfunction]
#[pyo3(signature = (theory, sd, object, chart, strict_guards=false))]
fn replay(
    theory: &PyDomainTheory,
    sd: &PySequenceDiagram,
    object: &str,
    chart: &PyStatechart,
    strict_guards: bool,
) -> PyResult<(bool, Option<usize>)> {
    if !sd.inner.has_object(object) {
        return Err(PyKeyError::new_err(object.to_string()));
    }
    let cfg = CheckConfig {
        strict_guards,
        ..Default::default()
    };
    let t = checker::replay(&sd.inner, object, &chart.inner, &theory.inner, &cfg);
    Ok(match t.verdict {
        checker::Verdict::Accepted => (true, None),
        checker::Verdict::RejectedAt(k) => (false, Some(k)),
    })
}

/// Minimal repair as `(cost, edits, repaired)`, where each edit is
/// `("delete", at, None)` or `("insert", at, "S -> R : label")`; `None`
/// when nothing within `max_edits` works.
#[pyfunction]
#[pyo3(signature = (theory, sd, object, chart, max_edits=checker::DEFAULT_MAX_EDITS))]
#[allow(clippy::type_complexity)]
fn repair(
    theory: &PyDomainTheory,
    sd: &PySequenceDiagram,
    object: &str,
    chart: &PyStatechart,
    max_edits: usize,
) -> PyResult<Option<(usize, Vec<(String, usize, Option<String>)>, PySequenceDiagram)>> {
    if !sd.inner.has_object(object) {
        return Err(PyKeyError::new_err(object.to_string()));
    }
    let r = checker::repair(
        &sd.inner,
        object,
        &chart.inner,
        &theory.inner,
        max_edits,
        &CheckConfig::default(),
    );
    Ok(r.ok().map(|r| {
        let edits = r
            .edits
            .iter()
            .map(|e| match e {
                RepairEdit::Delete { at } => ("delete".to_string(), *at, None),
                RepairEdit::Insert { message, at } => (
                    "insert".to_string(),
                    *at,
                    Some(format!(
                        "{} -> {} : {}",
                        message.sender,
                        message.receiver,
                        message.text()
                    )),
                ),
            })
            .collect();
        (r.cost, edits, PySequenceDiagram { inner: r.repaired_sd })
    }))
}

/// Run the command line in-process: `(exit_code, stdout, stderr)`.
#[pyfunction]
fn run_cli(args: Vec<String>) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = cli::run(std::iter::once("scdebug".to_string()).chain(args), &mut out, &mut err);
    (
        code,
        String::from_utf8_lossy(&out).into_owned(),
        String::from_utf8_lossy(&err).into_owned(),
    )
}

#[pymodule]
#[pyo3(name = "scdebug")]
fn scdebug_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDomainTheory>()?;
    m.add_class::<PySequenceDiagram>()?;
    m.add_class::<PyStatechart>()?;
    m.add_class::<PyConflict>()?;
    m.add_class::<PyAnnotation>()?;
    m.add_function(wrap_pyfunction!(annotate, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(replay, m)?)?;
    m.add_function(wrap_pyfunction!(repair, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    m.add("SCHEMA_VERSION", report::SCHEMA_VERSION)?;
    Ok(())
}
