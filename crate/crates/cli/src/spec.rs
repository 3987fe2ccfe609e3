//! Experiment specifications: what to run, with which parameters, where to
//! write it. Specs are plain JSON and round-trip through the manifest.

use std::fmt;
use std::path::{Path, PathBuf};

use mobserv::graph::{complete, petersen, GraphError};
use mobserv::metastability::StartState;
use mobserv::transit::MAX_ENUMERATION_VERTICES;
use mobserv::GraphTopology;
use serde::{Deserialize, Serialize};

use crate::RunnerError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphSpec {
    Cycle { k: usize },
    Torus { k: usize, l: usize },
    Petersen,
    Complete { n: usize },
    EdgeList { path: PathBuf },
}

impl GraphSpec {
    pub fn build(&self) -> Result<GraphTopology, GraphError> {
        match self {
            GraphSpec::Cycle { k } => GraphTopology::cycle(*k),
            GraphSpec::Torus { k, l } => GraphTopology::torus(*k, *l),
            GraphSpec::Petersen => Ok(petersen()),
            GraphSpec::Complete { n } => complete(*n),
            GraphSpec::EdgeList { path } => GraphTopology::load_edge_list(path),
        }
    }

    pub fn label(&self) -> String {
        match self {
            GraphSpec::Cycle { k } => format!("C{k}"),
            GraphSpec::Torus { k, l } => format!("Torus({k},{l})"),
            GraphSpec::Petersen => "Petersen".into(),
            GraphSpec::Complete { n } => format!("K{n}"),
            GraphSpec::EdgeList { path } => path.display().to_string(),
        }
    }
}

fn cycle7() -> GraphSpec {
    GraphSpec::Cycle { k: 7 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitMethodSpec {
    #[default]
    #[serde(alias = "closed")]
    ClosedForm,
    #[serde(alias = "brute")]
    BruteForce,
    #[serde(alias = "mc")]
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateParams {
    pub graph: GraphSpec,
    pub lambda: f64,
    pub beta: f64,
    pub replicas: usize,
    pub horizon: f64,
    pub record_interval: f64,
    /// Starting queue length of every server (random destinations).
    pub initial_level: u32,
    pub event_log: bool,
}

impl Default for SimulateParams {
    fn default() -> Self {
        Self {
            graph: cycle7(),
            lambda: 0.5,
            beta: 1.0,
            replicas: 1,
            horizon: 100.0,
            record_interval: 1.0,
            initial_level: 0,
            event_log: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransitParams {
    pub graph: GraphSpec,
    pub method: TransitMethodSpec,
    /// Monte-Carlo sample count.
    pub samples: u64,
    /// Random destination maps evaluated by the brute-force route.
    pub maps: usize,
    /// Brute force over every tagged server instead of server 0 only.
    pub all_tagged: bool,
}

impl Default for TransitParams {
    fn default() -> Self {
        Self { graph: cycle7(), method: TransitMethodSpec::ClosedForm, samples: 1_000_000, maps: 1, all_tagged: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveParams {
    pub beta: f64,
    /// Interior grid points `i / (grid + 1)`.
    pub grid: usize,
}

impl Default for CurveParams {
    fn default() -> Self {
        Self { beta: 1.0, grid: 99 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RootsParams {
    pub lambda: f64,
    pub beta: f64,
}

impl Default for RootsParams {
    fn default() -> Self {
        Self { lambda: 0.001, beta: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbsorptionParams {
    pub beta: f64,
    pub gamma: f64,
    pub n_max: usize,
    /// Monte-Carlo particles per start distance (0 skips the simulation).
    pub particles: usize,
    /// Largest start distance simulated.
    pub mc_max_start: usize,
}

impl Default for AbsorptionParams {
    fn default() -> Self {
        Self { beta: 1.0, gamma: 0.5, n_max: 20, particles: 0, mc_max_start: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LifetimeParams {
    pub graph: GraphSpec,
    pub lambda: f64,
    pub beta: f64,
    pub replicas: usize,
    pub runs: usize,
    pub horizon: f64,
    /// Defaults to ten times the mean queue at the low-load equilibrium.
    pub threshold: Option<u32>,
    pub start: StartState,
}

impl Default for LifetimeParams {
    fn default() -> Self {
        Self {
            graph: cycle7(),
            lambda: 0.54,
            beta: 0.2,
            replicas: 1,
            runs: 20,
            horizon: 2e5,
            threshold: None,
            start: StartState::Empty,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareParams {
    pub graph: GraphSpec,
    pub lambda: f64,
    pub beta: f64,
    pub replicas: usize,
    pub t0: f64,
    pub t1: f64,
    pub spacing: f64,
    /// Equilibrium load; defaults to the low root for `lambda`.
    pub eta: Option<f64>,
}

impl Default for CompareParams {
    fn default() -> Self {
        Self {
            graph: cycle7(),
            lambda: 0.54,
            beta: 0.2,
            replicas: 4,
            t0: 500.0,
            t1: 5000.0,
            spacing: 5.0,
            eta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftParams {
    pub graph: GraphSpec,
    pub lambda: f64,
    pub beta: f64,
    pub replicas: usize,
    pub blocks: usize,
}

impl Default for DriftParams {
    fn default() -> Self {
        Self { graph: GraphSpec::Cycle { k: 11 }, lambda: 0.5, beta: 1.0, replicas: 1, blocks: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "subcommand", content = "params", rename_all = "kebab-case")]
pub enum Experiment {
    Simulate(SimulateParams),
    Transit(TransitParams),
    NlmpCurve(CurveParams),
    NlmpRoots(RootsParams),
    Absorption(AbsorptionParams),
    Lifetime(LifetimeParams),
    Compare(CompareParams),
    Drift(DriftParams),
}

impl Experiment {
    pub fn subcommand(&self) -> &'static str {
        match self {
            Experiment::Simulate(_) => "simulate",
            Experiment::Transit(_) => "transit",
            Experiment::NlmpCurve(_) => "nlmp-curve",
            Experiment::NlmpRoots(_) => "nlmp-roots",
            Experiment::Absorption(_) => "absorption",
            Experiment::Lifetime(_) => "lifetime",
            Experiment::Compare(_) => "compare",
            Experiment::Drift(_) => "drift",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub seed: u64,
    pub out: PathBuf,
    pub experiment: Experiment,
}

impl ExperimentSpec {
    pub fn new(experiment: Experiment) -> Self {
        let name = experiment.subcommand().to_string();
        Self { out: PathBuf::from("results").join(&name), name, seed: 1, experiment }
    }

    /// Read a spec, or the spec recorded in a run manifest.
    pub fn load(path: &Path) -> Result<Self, RunnerError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunnerError::io(path, e))?;
        let mut value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| RunnerError::invalid("config", e.to_string()))?;
        if value.get("digests").is_some() {
            if let Some(spec) = value.get_mut("spec") {
                value = spec.take();
            }
        }
        serde_json::from_value(value).map_err(|e| RunnerError::invalid("config", e.to_string()))
    }

    /// Every problem with the spec, each tagged with the offending field.
    pub fn validate(&self) -> Result<(), RunnerError> {
        let mut v = Validator::default();
        if self.name.trim().is_empty() {
            v.fail("name", "must not be empty");
        }
        if self.out.as_os_str().is_empty() {
            v.fail("out", "must not be empty");
        }
        match &self.experiment {
            Experiment::Simulate(p) => {
                v.graph(&p.graph);
                v.non_negative("lambda", p.lambda);
                v.non_negative("beta", p.beta);
                v.at_least("replicas", p.replicas, 1);
                v.positive("horizon", p.horizon);
                v.positive("record_interval", p.record_interval);
            }
            Experiment::Transit(p) => {
                if let Some(g) = v.graph(&p.graph) {
                    match p.method {
                        TransitMethodSpec::BruteForce if g.vertex_count() > MAX_ENUMERATION_VERTICES => v.fail(
                            "graph",
                            format!("brute force needs at most {MAX_ENUMERATION_VERTICES} vertices"),
                        ),
                        TransitMethodSpec::ClosedForm if !g.is_regular() => {
                            v.fail("method", "closed form needs a regular graph")
                        }
                        _ => {}
                    }
                }
                if p.method == TransitMethodSpec::MonteCarlo && p.samples < mobserv::transit::MIN_MC_SAMPLES {
                    v.fail("samples", format!("must be at least {}", mobserv::transit::MIN_MC_SAMPLES));
                }
                v.at_least("maps", p.maps, 1);
            }
            Experiment::NlmpCurve(p) => {
                v.non_negative("beta", p.beta);
                v.at_least("grid", p.grid, 1);
            }
            Experiment::NlmpRoots(p) => {
                v.positive("lambda", p.lambda);
                v.positive("beta", p.beta);
            }
            Experiment::Absorption(p) => {
                v.non_negative("beta", p.beta);
                v.positive("gamma", p.gamma);
                if p.particles == 1 {
                    v.fail("particles", "must be 0 or at least 2");
                }
            }
            Experiment::Lifetime(p) => {
                v.graph(&p.graph);
                v.positive("lambda", p.lambda);
                v.positive("beta", p.beta);
                v.at_least("replicas", p.replicas, 1);
                v.at_least("runs", p.runs, 1);
                v.positive("horizon", p.horizon);
                if let StartState::Geometric { eta } = p.start {
                    if !(0.0..1.0).contains(&eta) {
                        v.fail("start.eta", "must lie in [0, 1)");
                    }
                }
            }
            Experiment::Compare(p) => {
                v.graph(&p.graph);
                v.positive("lambda", p.lambda);
                v.positive("beta", p.beta);
                v.at_least("replicas", p.replicas, 1);
                if !(p.t0 >= 0.0 && p.t1 > p.t0) {
                    v.fail("t1", "window must satisfy 0 <= t0 < t1");
                }
                v.positive("spacing", p.spacing);
                if let Some(eta) = p.eta {
                    if !(eta > 0.0 && eta < 1.0) {
                        v.fail("eta", "must lie in (0, 1)");
                    }
                }
            }
            Experiment::Drift(p) => {
                v.graph(&p.graph);
                v.non_negative("lambda", p.lambda);
                v.non_negative("beta", p.beta);
                v.at_least("replicas", p.replicas, 1);
                v.at_least("blocks", p.blocks, 2);
            }
        }
        v.finish()
    }
}

/// One rejected field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Default)]
struct Validator {
    errors: Vec<FieldError>,
}

impl Validator {
    fn fail(&mut self, field: &str, message: impl Into<String>) {
        let field = match field {
            "name" | "out" | "seed" => field.to_string(),
            f => format!("params.{f}"),
        };
        self.errors.push(FieldError { field, message: message.into() });
    }

    fn positive(&mut self, field: &str, x: f64) {
        if !(x > 0.0 && x.is_finite()) {
            self.fail(field, format!("must be positive and finite (got {x})"));
        }
    }

    fn non_negative(&mut self, field: &str, x: f64) {
        if !(x >= 0.0 && x.is_finite()) {
            self.fail(field, format!("must be >= 0 and finite (got {x})"));
        }
    }

    fn at_least(&mut self, field: &str, x: usize, min: usize) {
        if x < min {
            self.fail(field, format!("must be at least {min} (got {x})"));
        }
    }

    fn graph(&mut self, spec: &GraphSpec) -> Option<GraphTopology> {
        match spec.build() {
            Ok(g) => Some(g),
            Err(e) => {
                self.fail("graph", e.to_string());
                None
            }
        }
    }

    fn finish(self) -> Result<(), RunnerError> {
        if self.errors.is_empty() {
            Ok(())
        } else {
            Err(RunnerError::Invalid(self.errors))
        }
    }
}
