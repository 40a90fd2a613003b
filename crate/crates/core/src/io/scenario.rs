//! JSON scenario documents.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::evolution::{uniform_partition, AuditConfig, EvolutionConfig, Problem};
use crate::geometry::{BoundarySpec, BoxGrid, DeformationField, MagnetizationField, ReferenceMesh, State};
use crate::magnetostatics::{StrayFieldModel, DEFAULT_TOLERANCE};
use crate::material::{Loads, MaterialParams};
use crate::optim::SolverOptions;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    pub extents: Vec<f64>,
    pub counts: Vec<usize>,
    #[serde(default)]
    pub boundary: BoundarySpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoxSpec {
    /// false drops the magnetostatic term altogether.
    pub enabled: bool,
    /// Box side over body diameter.
    pub padding: f64,
    pub cells: usize,
    pub samples_per_axis: usize,
    /// Relative residual of the potential solve.
    pub cg_tol: f64,
}

impl Default for BoxSpec {
    fn default() -> Self {
        Self {
            enabled: true,
            padding: 3.0,
            cells: 64,
            samples_per_axis: 2,
            cg_tol: DEFAULT_TOLERANCE,
        }
    }
}

/// Either `end` with `steps` (uniform) or explicit `knots`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knots: Option<Vec<f64>>,
}

impl TimeSpec {
    pub fn partition(&self) -> Result<Vec<f64>> {
        let times = match (&self.knots, self.end, self.steps) {
            (Some(knots), None, None) if self.start.is_none() => knots.clone(),
            (None, Some(end), Some(steps)) => {
                if steps == 0 {
                    return Err(invalid("time.steps must be positive"));
                }
                uniform_partition(self.start.unwrap_or(0.0), end, steps)
            }
            _ => return Err(invalid("time: give either `end` and `steps` (optionally `start`), or `knots`")),
        };
        if times.len() < 2 {
            return Err(invalid("time.knots needs at least two entries"));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("time: partition must be finite and strictly increasing"));
        }
        Ok(times)
    }
}

/// Uniform M direction, optionally replaced node by node from a JSON file
/// `{"y": [...], "m": [...]}` (flat, d values per node; either key may be
/// omitted). Relative paths are taken from the scenario's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSpec {
    pub direction: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

impl Default for InitialSpec {
    fn default() -> Self {
        Self {
            direction: vec![1.0, 0.0],
            file: None,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NodalFile {
    #[serde(default)]
    y: Option<Vec<f64>>,
    #[serde(default)]
    m: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub trace: String,
    /// Write field snapshots every this many steps; 0 writes the final state only.
    pub fields_stride: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            trace: "trace.csv".into(),
            fields_stride: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub mesh: MeshSpec,
    #[serde(rename = "box", default)]
    pub box_spec: BoxSpec,
    pub material: MaterialParams,
    #[serde(default)]
    pub loads: Loads,
    pub time: TimeSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub audit: AuditConfig,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub seed: u64,
    /// Directory that relative input paths refer to.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Everything a run needs, built from a [`Scenario`].
pub struct Setup {
    pub mesh: ReferenceMesh,
    pub params: MaterialParams,
    pub loads: Loads,
    pub stray: Option<StrayFieldModel>,
    pub solver: SolverOptions,
    pub initial: State,
    pub config: EvolutionConfig,
}

impl Setup {
    pub fn problem(&self) -> Problem<'_> {
        Problem {
            mesh: &self.mesh,
            params: &self.params,
            loads: &self.loads,
            stray: self.stray.as_ref(),
            solver: &self.solver,
        }
    }
}

fn parse_error(path: &Path, e: serde_json::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Reads and validates a scenario.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut scenario = parse_scenario(&text).map_err(|e| match e {
        Error::Parse { line, column, message, .. } => Error::Parse {
            path: path.to_path_buf(),
            line,
            column,
            message,
        },
        other => other,
    })?;
    scenario.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    scenario.validate()?;
    Ok(scenario)
}

/// Parses a scenario document without validating it.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    serde_json::from_str(text).map_err(|e| parse_error(Path::new("<scenario>"), e))
}

impl Scenario {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn dim(&self) -> usize {
        self.mesh.extents.len()
    }

    fn initial_file(&self) -> Option<PathBuf> {
        self.initial.file.as_ref().map(|f| if f.is_absolute() { f.clone() } else { self.base_dir.join(f) })
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.dim();
        if !(2..=3).contains(&dim) {
            return Err(invalid(format!("mesh.extents: dimension must be 2 or 3, got {dim}")));
        }
        if self.mesh.counts.len() != dim {
            return Err(invalid("mesh.counts must have one entry per axis of mesh.extents"));
        }
        ReferenceMesh::new(&self.mesh.extents, &self.mesh.counts, self.mesh.boundary.clone())?;
        self.material.validate(dim)?;
        let times = self.time.partition()?;
        self.loads.validate(dim, times[times.len() - 1])?;
        self.solver.validate()?;
        self.audit.validate()?;
        let b = &self.box_spec;
        if b.enabled {
            if !(b.padding >= 1.0) {
                return Err(invalid("box.padding must be at least 1"));
            }
            if b.cells < 2 {
                return Err(invalid("box.cells must be at least 2"));
            }
            if b.samples_per_axis == 0 {
                return Err(invalid("box.samples_per_axis must be positive"));
            }
            if !(b.cg_tol > 0.0 && b.cg_tol < 1.0) {
                return Err(invalid("box.cg_tol must lie in (0, 1)"));
            }
        }
        if self.initial.direction.len() != dim {
            return Err(invalid(format!("initial.direction must have {dim} components")));
        }
        if !(self.initial.direction.iter().map(|v| v * v).sum::<f64>() > 0.0) {
            return Err(invalid("initial.direction must be nonzero"));
        }
        if let Some(file) = self.initial_file() {
            if !file.is_file() {
                return Err(invalid(format!("initial.file: {} does not exist", file.display())));
            }
        }
        if self.output.trace.is_empty() {
            return Err(invalid("output.trace must be a file name"));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Setup> {
        self.validate()?;
        let mesh = ReferenceMesh::new(&self.mesh.extents, &self.mesh.counts, self.mesh.boundary.clone())?;
        let stray = if self.box_spec.enabled {
            let grid = BoxGrid::around_mesh(&mesh, self.box_spec.padding, self.box_spec.cells)?;
            Some(StrayFieldModel::new(
                &grid,
                self.material.mu0,
                self.box_spec.cg_tol,
                self.box_spec.samples_per_axis,
            )?)
        } else {
            None
        };
        let initial = self.initial_state(&mesh)?;
        Ok(Setup {
            config: EvolutionConfig {
                times: self.time.partition()?,
                audit: self.audit.clone(),
                seed: self.seed,
            },
            mesh,
            params: self.material.clone(),
            loads: self.loads.clone(),
            stray,
            solver: self.solver.clone(),
            initial,
        })
    }

    fn initial_state(&self, mesh: &ReferenceMesh) -> Result<State> {
        let dim = mesh.dim();
        let mut d = [0.0; 3];
        d[..dim].copy_from_slice(&self.initial.direction);
        let mut state = State {
            y: DeformationField::identity(mesh),
            m: MagnetizationField::uniform(mesh, &d)?,
        };
        if let Some(path) = self.initial_file() {
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let nodal: NodalFile = serde_json::from_str(&text).map_err(|e| parse_error(&path, e))?;
            if let Some(y) = nodal.y {
                state.y = DeformationField::from_values(dim, y);
            }
            if let Some(m) = nodal.m {
                state.m = MagnetizationField::from_values(dim, m);
            }
            state.check_mesh(mesh).map_err(|e| invalid(format!("initial.file {}: {e}", path.display())))?;
            if state.m.saturation_defect() > 1e-12 {
                return Err(invalid(format!("initial.file {}: m must have unit length at every node", path.display())));
            }
        }
        Ok(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "mesh": {"extents": [1, 1], "counts": [4, 4]},
        "material": {"mu": 0.5, "p": 3, "alpha": 0.05},
        "time": {"end": 1, "steps": 10}
    }"#;

    #[test]
    fn minimal_document_gets_defaults() {
        let s = parse_scenario(MINIMAL).unwrap();
        s.validate().unwrap();
        assert_eq!(s.box_spec, BoxSpec::default());
        assert_eq!(s.solver, SolverOptions::default());
        assert_eq!(s.audit, AuditConfig::default());
        assert_eq!(s.mesh.boundary, BoundarySpec::default());
        assert_eq!(s.seed, 0);
        assert_eq!(s.time.partition().unwrap().len(), 11);
    }

    #[test]
    fn unknown_key_is_named() {
        let text = MINIMAL.replace("\"time\"", "\"foo\": 1, \"time\"");
        let err = parse_scenario(&text).unwrap_err().to_string();
        assert!(err.contains("foo"), "{err}");
        let text = MINIMAL.replace("\"alpha\"", "\"colour\": 1, \"alpha\"");
        let err = parse_scenario(&text).unwrap_err().to_string();
        assert!(err.contains("colour"), "{err}");
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = parse_scenario("{\n  \"seed\": 1,\n}").unwrap_err();
        match err {
            Error::Parse { line, column, .. } => assert!(line == 3 && column >= 1),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn p_not_above_d_is_rejected() {
        let s = parse_scenario(&MINIMAL.replace("\"p\": 3", "\"p\": 2")).unwrap();
        let err = s.validate().unwrap_err().to_string();
        assert!(err.contains("p must exceed d"), "{err}");
    }

    #[test]
    fn partition_must_be_specified_once() {
        let s = parse_scenario(&MINIMAL.replace("\"steps\": 10", "\"steps\": 10, \"knots\": [0, 1]")).unwrap();
        assert!(s.validate().is_err());
        let s = parse_scenario(&MINIMAL.replace("\"end\": 1, \"steps\": 10", "\"knots\": [0, 0.25, 1]")).unwrap();
        assert_eq!(s.time.partition().unwrap(), vec![0.0, 0.25, 1.0]);
    }

    #[test]
    fn round_trip_is_idempotent() {
        let s = parse_scenario(MINIMAL).unwrap();
        let once = s.to_json();
        let again = parse_scenario(&once).unwrap();
        assert_eq!(again, s);
        assert_eq!(again.to_json(), once);
    }

    #[test]
    fn initial_file_must_exist() {
        let mut s = parse_scenario(MINIMAL).unwrap();
        s.initial.file = Some(PathBuf::from("/nonexistent/initial.json"));
        let err = s.validate().unwrap_err().to_string();
        assert!(err.contains("/nonexistent/initial.json"), "{err}");
    }
}
