//! Scenario files: JSON descriptions of a model, a grid, named initial
//! states, output times and the tasks to run on them.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use gpx_core::model::ExampleKind;
use gpx_core::{build_model, EvolveOptions, Grid, ModelSpec, QuadraticModel};
use serde::Deserialize;

use crate::CliError;

/// Either an inline model description or a path to a JSON file holding one.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum ModelRef {
    Inline(Box<ModelSpec>),
    File(PathBuf),
}

/// A cube `[min, max]^n` with `points` samples per axis.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub state: String,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StateSpec {
    /// `∏ₖ (πwₖ²)^{-1/4} exp(−dₖ²/2wₖ² + i pₖdₖ/ħ + i·chirp·dₖ²/2)`,
    /// `d = x − center`, times `amplitude`.
    Gaussian {
        center: Vec<f64>,
        #[serde(default)]
        momentum: Vec<f64>,
        width: Vec<f64>,
        #[serde(default)]
        chirp: f64,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default)]
        t: f64,
    },
    /// Closed-form Fock solution `Ψ_n(·, t)` of the 1D example.
    Fock {
        n: usize,
        #[serde(default)]
        t: f64,
    },
    /// Pointwise linear combination of other named states.
    Superposition { terms: Vec<Term> },
    /// A state file (`.csv` or binary), relative to the scenario file.
    File { path: PathBuf },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TaskSpec {
    Evolve {
        state: String,
        #[serde(default = "yes")]
        densities: bool,
        #[serde(default)]
        tol: Option<f64>,
    },
    InverseRoundtrip {
        state: String,
        #[serde(default)]
        tol: Option<f64>,
    },
    Ladder {
        #[serde(default = "five")]
        n_max: usize,
        #[serde(default)]
        t: f64,
        #[serde(default)]
        tol: Option<f64>,
    },
    QuasiEnergy {
        #[serde(default = "two")]
        n_max: usize,
        #[serde(default)]
        tol: Option<f64>,
    },
    OracleCompare {
        state: String,
        #[serde(default = "default_dt")]
        dt: f64,
        #[serde(default)]
        tol: Option<f64>,
    },
    KernelCrosscheck {
        #[serde(default = "hundred")]
        samples: usize,
        #[serde(default = "one_u64")]
        seed: u64,
        #[serde(default)]
        tol: Option<f64>,
    },
}

impl TaskSpec {
    pub fn name(&self) -> &'static str {
        match self {
            TaskSpec::Evolve { .. } => "evolve",
            TaskSpec::InverseRoundtrip { .. } => "inverse-roundtrip",
            TaskSpec::Ladder { .. } => "ladder",
            TaskSpec::QuasiEnergy { .. } => "quasi-energy",
            TaskSpec::OracleCompare { .. } => "oracle-compare",
            TaskSpec::KernelCrosscheck { .. } => "kernel-crosscheck",
        }
    }

    fn state(&self) -> Option<&str> {
        match self {
            TaskSpec::Evolve { state, .. }
            | TaskSpec::InverseRoundtrip { state, .. }
            | TaskSpec::OracleCompare { state, .. } => Some(state),
            _ => None,
        }
    }

    fn needs_schedule(&self) -> bool {
        self.state().is_some()
    }

    fn needs_1d_example(&self) -> bool {
        matches!(self, TaskSpec::Ladder { .. } | TaskSpec::QuasiEnergy { .. })
    }
}

/// Planner settings that may be tuned per scenario.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerOptions {
    #[serde(default)]
    pub max_phase_per_cell: Option<f64>,
    #[serde(default)]
    pub tail_tol: Option<f64>,
    #[serde(default)]
    pub max_segments: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub model: ModelRef,
    pub grid: GridSpec,
    #[serde(default)]
    pub states: BTreeMap<String, StateSpec>,
    #[serde(default)]
    pub schedule: Vec<f64>,
    #[serde(default)]
    pub tasks: Vec<TaskSpec>,
    #[serde(default)]
    pub options: PlannerOptions,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Directory that relative paths in the scenario are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Command-line settings that take precedence over the scenario file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub tol: Option<f64>,
    pub grid: Option<usize>,
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn two() -> usize {
    2
}
fn five() -> usize {
    5
}
fn hundred() -> usize {
    100
}
fn one_u64() -> u64 {
    1
}
fn default_dt() -> f64 {
    1e-4
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Scenario::from_json(&text, &base)
    }

    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let mut s: Scenario = serde_json::from_str(text).map_err(|e| CliError::Config(vec![e.to_string()]))?;
        s.base_dir = base_dir.to_path_buf();
        Ok(s)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(n) = o.grid {
            self.grid.points = n;
        }
        if let Some(tol) = o.tol {
            for task in &mut self.tasks {
                match task {
                    TaskSpec::Evolve { tol: t, .. }
                    | TaskSpec::InverseRoundtrip { tol: t, .. }
                    | TaskSpec::Ladder { tol: t, .. }
                    | TaskSpec::QuasiEnergy { tol: t, .. }
                    | TaskSpec::OracleCompare { tol: t, .. }
                    | TaskSpec::KernelCrosscheck { tol: t, .. } => *t = Some(tol),
                }
            }
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.out)
    }

    pub fn model_spec(&self) -> Result<ModelSpec, CliError> {
        match &self.model {
            ModelRef::Inline(spec) => Ok((**spec).clone()),
            ModelRef::File(p) => {
                let path = self.resolve(p);
                let text = fs::read_to_string(&path)
                    .map_err(|e| CliError::Config(vec![format!("cannot read model file {}: {e}", path.display())]))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(vec![format!("model file {}: {e}", path.display())]))
            }
        }
    }

    pub fn build_model(&self) -> Result<QuadraticModel, CliError> {
        build_model(&self.model_spec()?).map_err(|e| CliError::Config(vec![format!("model: {e}")]))
    }

    pub fn build_grid(&self, dim: usize) -> Result<Grid, CliError> {
        Grid::cube(dim, self.grid.min, self.grid.max, self.grid.points)
            .map_err(|e| CliError::Config(vec![format!("grid: {e}")]))
    }

    pub fn evolve_options(&self) -> EvolveOptions {
        let mut o = EvolveOptions::default();
        if let Some(v) = self.options.max_phase_per_cell {
            o.max_phase_per_cell = v;
        }
        if let Some(v) = self.options.tail_tol {
            o.tail_tol = v;
        }
        if let Some(v) = self.options.max_segments {
            o.max_segments = v;
        }
        o
    }

    /// Every schema violation found, or `Ok` if there are none.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut v = Vec::new();
        let spec = match self.model_spec() {
            Ok(s) => Some(s),
            Err(CliError::Config(mut e)) => {
                v.append(&mut e);
                None
            }
            Err(e) => return Err(e),
        };
        let dim = spec.as_ref().map(|s| s.n);
        let example = spec.as_ref().map(|s| s.example);

        if !(self.grid.min < self.grid.max) || !self.grid.min.is_finite() || !self.grid.max.is_finite() {
            v.push(format!("grid: need finite min < max, got [{}, {}]", self.grid.min, self.grid.max));
        }
        if self.grid.points < 2 {
            v.push(format!("grid: need at least 2 points per axis, got {}", self.grid.points));
        }
        if self.schedule.iter().any(|t| !t.is_finite()) {
            v.push("schedule: times must be finite".into());
        }
        if self.schedule.windows(2).any(|w| w[1] <= w[0]) {
            v.push("schedule: times must be strictly increasing".into());
        }

        for (name, state) in &self.states {
            match state {
                StateSpec::Gaussian { center, momentum, width, .. } => {
                    if let Some(n) = dim {
                        if center.len() != n {
                            v.push(format!("state {name}: center has {} entries for dimension {n}", center.len()));
                        }
                        if !momentum.is_empty() && momentum.len() != n {
                            v.push(format!("state {name}: momentum has {} entries for dimension {n}", momentum.len()));
                        }
                        if width.len() != n {
                            v.push(format!("state {name}: width has {} entries for dimension {n}", width.len()));
                        }
                    }
                    if width.iter().any(|w| !(*w > 0.0)) {
                        v.push(format!("state {name}: widths must be positive"));
                    }
                }
                StateSpec::Fock { .. } if example.is_some_and(|e| e != ExampleKind::OneD) => {
                    v.push(format!("state {name}: Fock states need the 1d example model"));
                }
                StateSpec::Fock { .. } => {}
                StateSpec::Superposition { terms } => {
                    if terms.is_empty() {
                        v.push(format!("state {name}: empty superposition"));
                    }
                    for t in terms {
                        if !self.states.contains_key(&t.state) {
                            v.push(format!("state {name}: term references undefined state {:?}", t.state));
                        }
                    }
                }
                StateSpec::File { .. } => {}
            }
        }
        if let Some(cycle) = self.superposition_cycle() {
            v.push(format!("states: superposition cycle through {cycle:?}"));
        }

        for (i, task) in self.tasks.iter().enumerate() {
            let label = format!("task {i} ({})", task.name());
            if let Some(s) = task.state() {
                if !self.states.contains_key(s) {
                    v.push(format!("{label}: references undefined state {s:?}"));
                }
            }
            if task.needs_schedule() && self.schedule.is_empty() {
                v.push(format!("{label}: needs a non-empty schedule"));
            }
            if task.needs_1d_example() && example.is_some_and(|e| e != ExampleKind::OneD) {
                v.push(format!("{label}: needs the 1d example model"));
            }
            match task {
                TaskSpec::KernelCrosscheck { .. } if example == Some(ExampleKind::Custom) => {
                    v.push(format!("{label}: closed forms exist only for the 1d and 3d examples"));
                }
                TaskSpec::OracleCompare { dt, .. } if !(*dt > 0.0) => {
                    v.push(format!("{label}: dt must be positive"));
                }
                _ => {}
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(v))
        }
    }

    fn superposition_cycle(&self) -> Option<String> {
        fn visit(
            s: &Scenario,
            name: &str,
            active: &mut BTreeSet<String>,
            done: &mut BTreeSet<String>,
        ) -> Option<String> {
            if done.contains(name) {
                return None;
            }
            if !active.insert(name.to_string()) {
                return Some(name.to_string());
            }
            if let Some(StateSpec::Superposition { terms }) = s.states.get(name) {
                for t in terms {
                    if let Some(c) = visit(s, &t.state, active, done) {
                        return Some(c);
                    }
                }
            }
            active.remove(name);
            done.insert(name.to_string());
            None
        }
        let mut done = BTreeSet::new();
        self.states.keys().find_map(|k| visit(self, k, &mut BTreeSet::new(), &mut done))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(states: &str) -> Scenario {
        let text = format!(
            r#"{{"name": "t", "model": {{"n": 1, "example": "custom", "hzz": [1, 0, 0, 1], "hz": [0, 0]}},
                "grid": {{"min": -1, "max": 1, "points": 8}}, "states": {states}}}"#
        );
        Scenario::from_json(&text, Path::new("")).unwrap()
    }

    #[test]
    fn superposition_cycles_are_rejected() {
        let s = scenario(
            r#"{"a": {"kind": "superposition", "terms": [{"state": "b", "re": 1}]},
                "b": {"kind": "superposition", "terms": [{"state": "a", "re": 1}]}}"#,
        );
        let Err(CliError::Config(v)) = s.validate() else { panic!("cycle accepted") };
        assert!(v.iter().any(|m| m.contains("cycle")), "{v:?}");
    }

    #[test]
    fn gaussian_dimensions_are_checked() {
        let s = scenario(r#"{"g": {"kind": "gaussian", "center": [0, 0], "width": [1]}}"#);
        let Err(CliError::Config(v)) = s.validate() else { panic!("bad center accepted") };
        assert_eq!(v.len(), 1, "{v:?}");
    }

    #[test]
    fn overrides_replace_tolerances_and_grid() {
        let mut s = scenario("{}");
        s.tasks.push(TaskSpec::KernelCrosscheck { samples: 1, seed: 1, tol: None });
        s.apply(&Overrides { out: Some(PathBuf::from("/tmp/x")), tol: Some(0.5), grid: Some(16) });
        assert_eq!(s.grid.points, 16);
        assert_eq!(s.output_dir(), PathBuf::from("/tmp/x"));
        assert!(matches!(s.tasks[0], TaskSpec::KernelCrosscheck { tol: Some(t), .. } if t == 0.5));
    }
}
