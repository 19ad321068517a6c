//! Python bindings: build or load a scenario, drive a session step by step
//! or to completion with scripted or callable guidance, and replay logs.
//!
//! Structured values (events, requests, results) cross over as plain dicts
//! with the same shape as the JSON log.

use std::sync::{Mutex, MutexGuard};

use guided_mha::events::{read_log, EventWriter};
use guided_mha::scenario::override_config;
use guided_mha::{
    restore, run_session, GuidanceAnswer, GuidanceRequest, Outcome, Phase, Planner, ReplayError, Scenario, Session,
    SessionSettings, Submission,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyString};
use serde::Serialize;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<T: Serialize + ?Sized>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(value_err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn from_py<T: serde::de::DeserializeOwned>(value: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = value.py().import("json")?.call_method1("dumps", (value,))?.extract()?;
    serde_json::from_str(&text).map_err(value_err)
}

fn phase_name(phase: Phase) -> &'static str {
    match phase {
        Phase::Searching => "searching",
        Phase::AwaitingGuidance => "awaiting_guidance",
        Phase::Guided => "guided",
        Phase::Finished(Outcome::Solved) => "solved",
        Phase::Finished(Outcome::BudgetExhausted) => "budget_exhausted",
        Phase::Finished(Outcome::SpaceExhausted) => "space_exhausted",
        Phase::Finished(Outcome::Declined) => "declined",
    }
}

/// A configuration list, or `None` / `"decline"`.
fn answer(item: &Bound<'_, PyAny>) -> PyResult<GuidanceAnswer> {
    if item.is_none() {
        return Ok(GuidanceAnswer::Decline);
    }
    if let Ok(s) = item.cast::<PyString>() {
        return match s.to_str()? {
            "decline" => Ok(GuidanceAnswer::Decline),
            other => Err(PyValueError::new_err(format!("unknown guidance answer {other:?}"))),
        };
    }
    Ok(GuidanceAnswer::Configuration(item.extract()?))
}

#[pyclass(name = "Scenario", module = "gmha_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyScenario {
    inner: Scenario,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn builtin(name: &str) -> PyResult<Self> {
        Scenario::builtin(name)
            .map(|inner| Self { inner })
            .ok_or_else(|| PyValueError::new_err(format!("unknown builtin {name:?}")))
    }

    #[staticmethod]
    fn builtins() -> Vec<&'static str> {
        Scenario::BUILTIN.to_vec()
    }

    /// The scripted guidance shipped with a built-in scenario.
    #[staticmethod]
    fn builtin_guidance(name: &str) -> PyResult<Vec<Vec<f64>>> {
        Scenario::builtin_guidance(name).ok_or_else(|| PyValueError::new_err(format!("unknown builtin {name:?}")))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = Scenario::from_json(text).map_err(value_err)?;
        inner.planner().map_err(value_err)?;
        Ok(Self { inner })
    }

    /// A grid from map text: `.` free, `#` blocked, `S` start, `T` goal.
    #[staticmethod]
    fn from_map(text: &str) -> PyResult<Self> {
        let inner = Scenario::from_map_text(text);
        inner.planner().map_err(value_err)?;
        Ok(Self { inner })
    }

    /// A copy with planner settings replaced, e.g. `with_config(w1=3.0)`.
    #[pyo3(signature = (**overrides))]
    fn with_config(&self, overrides: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut inner = self.inner.clone();
        if let Some(o) = overrides {
            inner.config = override_config(&inner.config, &from_py(o.as_any())?).map_err(value_err)?;
            inner.config.validate().map_err(value_err)?;
        }
        Ok(Self { inner })
    }

    #[getter]
    fn name(&self) -> Option<String> {
        self.inner.name.clone()
    }

    #[getter]
    fn config(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.config)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!("Scenario({:?})", self.inner.name.as_deref().unwrap_or("unnamed"))
    }
}

/// A planning session that parks when it needs guidance.
#[pyclass(name = "Session", module = "gmha_py")]
pub struct PySession {
    inner: Mutex<Session>,
}

impl PySession {
    fn lock(&self) -> MutexGuard<'_, Session> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }
}

#[pymethods]
impl PySession {
    #[new]
    #[pyo3(signature = (scenario, guidance = true))]
    fn new(scenario: &PyScenario, guidance: bool) -> PyResult<Self> {
        let settings = SessionSettings {
            guidance,
            ..SessionSettings::default()
        };
        let session = Session::from_scenario(&scenario.inner, settings).map_err(value_err)?;
        Ok(Self {
            inner: Mutex::new(session),
        })
    }

    /// Restores a session from its NDJSON log.
    #[staticmethod]
    fn from_log(log: &str) -> PyResult<Self> {
        let events = read_log(log.as_bytes()).map_err(value_err)?;
        let session = restore(&events).map_err(value_err)?;
        Ok(Self {
            inner: Mutex::new(session),
        })
    }

    /// One expansion; returns the events it produced.
    fn step(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let mut s = self.lock();
        let events = s.step().map_err(|e| PyRuntimeError::new_err(e.to_string()))?.to_vec();
        to_py(py, &events)
    }

    /// Steps until the session parks, finishes or has expanded
    /// `max_expansions` more states. Returns the phase.
    #[pyo3(signature = (max_expansions = 10_000))]
    fn advance(&self, py: Python<'_>, max_expansions: u64) -> PyResult<&'static str> {
        py.detach(|| {
            let mut s = self.lock();
            let stop = s.planner().expansions() + max_expansions;
            while matches!(s.phase(), Phase::Searching | Phase::Guided) && s.planner().expansions() < stop {
                s.step().map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
            }
            Ok(phase_name(s.phase()))
        })
    }

    #[getter]
    fn phase(&self) -> &'static str {
        phase_name(self.lock().phase())
    }

    #[getter]
    fn finished(&self) -> bool {
        self.lock().is_finished()
    }

    #[getter]
    fn pending_request(&self, py: Python<'_>) -> PyResult<Option<Py<PyAny>>> {
        self.lock().pending_request().map(|r| to_py(py, r)).transpose()
    }

    #[getter]
    fn totals(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.lock().totals())
    }

    /// Hands guidance to a parked session. Returns `("accepted", queue)`,
    /// `("rejected", reason)` or `("declined", None)`.
    fn submit<'py>(&self, py: Python<'py>, configuration: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
        let submission = self
            .lock()
            .submit(answer(configuration)?)
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        let pair = match submission {
            Submission::Accepted { queue } => ("accepted", queue.into_pyobject(py)?.into_any()),
            Submission::Rejected { reason } => ("rejected", reason.into_pyobject(py)?.into_any()),
            Submission::Declined => ("declined", py.None().into_bound(py)),
        };
        pair.into_pyobject(py).map(Bound::into_any)
    }

    fn decline(&self) -> PyResult<()> {
        self.lock()
            .submit(GuidanceAnswer::Decline)
            .map(drop)
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    /// Asks for guidance again after a decline.
    fn reopen(&self) -> PyResult<()> {
        self.lock().reopen().map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn events(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, self.lock().events())
    }

    /// The event log as NDJSON text.
    fn log(&self) -> PyResult<String> {
        let mut w = EventWriter::new(Vec::new());
        w.write_all(self.lock().events()).map_err(value_err)?;
        String::from_utf8(w.into_inner()).map_err(value_err)
    }

    /// Outcome, cost, path and totals once finished, else `None`.
    fn result(&self, py: Python<'_>) -> PyResult<Option<Py<PyAny>>> {
        let Some(mut r) = self.lock().result() else {
            return Ok(None);
        };
        r.events.clear();
        let dict = to_py(py, &r)?;
        dict.bind(py).del_item("events")?;
        Ok(Some(dict))
    }
}

/// Runs a scenario to completion. `guidance` is a list of answers used in
/// order (declining once it runs out) or a callable taking the request dict
/// and returning a configuration, `None` or `"decline"`.
#[pyfunction]
#[pyo3(signature = (scenario, guidance = None, enabled = true))]
fn run<'py>(
    py: Python<'py>,
    scenario: &PyScenario,
    guidance: Option<&Bound<'py, PyAny>>,
    enabled: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let settings = SessionSettings {
        guidance: enabled,
        ..SessionSettings::default()
    };
    let mut session = Session::from_scenario(&scenario.inner, settings).map_err(value_err)?;
    let mut error = None;
    let result = match guidance {
        Some(f) if f.is_callable() => {
            let mut provider = |request: &GuidanceRequest, _: &Planner| {
                if error.is_some() {
                    return GuidanceAnswer::Decline;
                }
                match to_py(py, request).and_then(|r| f.call1((r,))).and_then(|a| answer(&a)) {
                    Ok(a) => a,
                    Err(e) => {
                        error = Some(e);
                        GuidanceAnswer::Decline
                    }
                }
            };
            run_session(&mut session, &mut provider)
        }
        other => {
            let mut script = match other {
                Some(list) => list
                    .try_iter()?
                    .map(|item| answer(&item?))
                    .collect::<PyResult<Vec<_>>>()?,
                None => vec![],
            }
            .into_iter();
            let mut provider =
                |_: &GuidanceRequest, _: &Planner| script.next().unwrap_or(GuidanceAnswer::Decline);
            py.detach(|| run_session(&mut session, &mut provider))
        }
    };
    if let Some(e) = error {
        return Err(e);
    }
    let out = PyDict::new(py);
    out.set_item("outcome", to_py(py, &result.outcome)?)?;
    out.set_item("cost", result.cost)?;
    out.set_item("path", result.path)?;
    out.set_item("totals", to_py(py, &result.totals)?)?;
    let mut w = EventWriter::new(Vec::new());
    w.write_all(&result.events).map_err(value_err)?;
    out.set_item("log", String::from_utf8(w.into_inner()).map_err(value_err)?)?;
    Ok(out.into_any())
}

/// Re-executes an NDJSON log. Returns `None` when it reproduces exactly,
/// otherwise the first diverging sequence number.
#[pyfunction]
fn replay(log: &str) -> PyResult<Option<u64>> {
    let events = read_log(log.as_bytes()).map_err(value_err)?;
    match restore(&events) {
        Ok(_) => Ok(None),
        Err(ReplayError::Diverged { seq }) => Ok(Some(seq)),
        Err(e) => Err(value_err(e)),
    }
}

#[pymodule]
pub fn gmha_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PySession>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(replay, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_module<R>(f: impl FnOnce(Python<'_>, &Bound<'_, PyModule>) -> R) -> R {
        Python::initialize();
        Python::attach(|py| {
            let m = PyModule::new(py, "gmha_py").unwrap();
            gmha_py(&m).unwrap();
            f(py, &m)
        })
    }

    fn eval<'py>(py: Python<'py>, m: &Bound<'py, PyModule>, code: &str) -> Bound<'py, PyAny> {
        let globals = PyDict::new(py);
        globals.set_item("g", m).unwrap();
        let code = std::ffi::CString::new(code).unwrap();
        py.run(&code, Some(&globals), None).unwrap_or_else(|e| panic!("{e}"));
        globals.get_item("out").unwrap().unwrap()
    }

    #[test]
    fn u_trap_session_parks_and_resumes() {
        with_module(|py, m| {
            let out = eval(
                py,
                m,
                r#"
s = g.Session(g.Scenario.builtin("u_trap"))
first = s.advance()
req = s.pending_request
rejected = s.submit([0.0, 1e9])
accepted = s.submit(g.Scenario.builtin_guidance("u_trap")[0])
last = s.advance(1_000_000)
out = (first, req["queue"], rejected[0], accepted[0], last, s.result()["totals"]["guidances_used"], g.replay(s.log()))
"#,
            );
            let (first, queue, rejected, accepted, last, used, diverged): (String, usize, String, String, String, u64, Option<u64>) =
                out.extract().unwrap();
            assert_eq!(first, "awaiting_guidance");
            assert_eq!(queue, 1);
            assert_eq!((rejected.as_str(), accepted.as_str()), ("rejected", "accepted"));
            assert_eq!(last, "solved");
            assert_eq!(used, 1);
            assert_eq!(diverged, None);
        });
    }

    #[test]
    fn run_accepts_scripts_and_callables() {
        with_module(|py, m| {
            let out = eval(
                py,
                m,
                r#"
sc = g.Scenario.builtin("two_cups")
scripted = g.run(sc, g.Scenario.builtin_guidance("two_cups"))
asked = []
def human(request):
    asked.append(request["expansion"])
    return g.Scenario.builtin_guidance("two_cups")[0] if len(asked) == 1 else None
called = g.run(sc, human)
declined = g.run(sc, ["decline"])
out = (scripted["outcome"], called["outcome"], called["cost"] == scripted["cost"], len(asked), declined["outcome"])
"#,
            );
            let (a, b, same, asked, c): (String, String, bool, usize, String) = out.extract().unwrap();
            assert_eq!((a.as_str(), b.as_str(), c.as_str()), ("solved", "solved", "declined"));
            assert!(same);
            assert_eq!(asked, 1);
        });
    }

    #[test]
    fn errors_surface_as_python_exceptions() {
        with_module(|py, m| {
            let out = eval(
                py,
                m,
                r#"
caught = []
for f in (lambda: g.Scenario.builtin("nowhere"),
          lambda: g.Scenario.from_map("S..\n..."),
          lambda: g.Scenario.builtin("u_trap").with_config(w1=0.5),
          lambda: g.Session(g.Scenario.builtin("empty")).submit([1.0, 1.0]),
          lambda: g.run(g.Scenario.builtin("u_trap"), lambda r: 1 / 0)):
    try:
        f()
    except Exception as e:
        caught.append(type(e).__name__)
out = caught
"#,
            );
            let caught: Vec<String> = out.extract().unwrap();
            assert_eq!(
                caught,
                ["ValueError", "ValueError", "ValueError", "RuntimeError", "ZeroDivisionError"]
            );
        });
    }

    #[test]
    fn config_overrides_and_restore() {
        with_module(|py, m| {
            let out = eval(
                py,
                m,
                r#"
sc = g.Scenario.builtin("u_trap").with_config(expansion_budget=500, detector="vacillation")
r = g.run(sc, enabled=False)
s = g.Session.from_log(r["log"])
out = (sc.config["detector_kind"], r["outcome"], r["totals"]["expansions"], s.phase, g.Scenario.from_json(sc.to_json()).name)
"#,
            );
            let (kind, outcome, n, phase, name): (String, String, u64, String, String) = out.extract().unwrap();
            assert_eq!(kind, "vacillation");
            assert_eq!(outcome, "budget_exhausted");
            assert_eq!(n, 500);
            assert_eq!(phase, "budget_exhausted");
            assert_eq!(name, "u_trap");
        });
    }
}
