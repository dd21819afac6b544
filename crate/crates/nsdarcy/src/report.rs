//! Run configuration, convergence studies and file output.
//!
//! Everything that leaves the solver — convergence tables, adaptive traces,
//! per-element indicator dumps, VTK snapshots and MatrixMarket matrices — is
//! first rendered to a `String` by a pure builder, then written to disk.
//! The builders iterate in fixed orders and format floats with the shortest
//! round-trip representation, so repeated runs produce byte-identical files.

use crate::adaptivity::{
    run_adaptive_with, AdaptiveError, AdaptiveLevel, MarkingConfig, MarkingStrategy,
};
use crate::assembly::{apply_pressure_gauge, assemble_forms, SparseSystem};
use crate::dofs::{DiscreteSolution, DofMap};
use crate::estimator::{assemble_indicators, IndicatorField, WeightMode};
use crate::mesh::{Mesh, MeshError, Subdomain};
use crate::model::{
    checkerboard_problem, make_manufactured_params, Case, ExactSolution, ProblemData,
};
use crate::norms::{self, ErrorNorms};
use crate::solver::{solve_stationary, SolveError, SolverConfig};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed file: {0}")]
    Parse(String),
}

impl ReportError {
    /// Process exit code for the CLI: 2 configuration, 3 solver, 4 i/o.
    pub fn exit_code(&self) -> i32 {
        match self {
            ReportError::Config(_) | ReportError::Mesh(_) => 2,
            ReportError::Solve(_) => 3,
            ReportError::Io { .. } | ReportError::Parse(_) => 4,
        }
    }
}

/// What a run does; selected by the CLI subcommand and optionally pinned in
/// the configuration file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunMode {
    SingleSolve,
    UniformStudy,
    AdaptiveRun,
}

impl RunMode {
    pub fn name(self) -> &'static str {
        match self {
            RunMode::SingleSolve => "single_solve",
            RunMode::UniformStudy => "uniform_study",
            RunMode::AdaptiveRun => "adaptive_run",
        }
    }
}

impl FromStr for RunMode {
    type Err = String;

    fn from_str(s: &str) -> Result<RunMode, String> {
        match s {
            "single_solve" => Ok(RunMode::SingleSolve),
            "uniform_study" => Ok(RunMode::UniformStudy),
            "adaptive_run" => Ok(RunMode::AdaptiveRun),
            _ => Err(format!(
                "unknown mode '{s}' (expected single_solve, uniform_study or adaptive_run)"
            )),
        }
    }
}

fn default_width() -> f64 {
    1.0
}
fn default_n0() -> usize {
    2
}
fn default_levels() -> usize {
    1
}
fn default_estimator() -> String {
    "verbatim".to_owned()
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    #[serde(default = "PhysicsConfig::default_mu")]
    pub mu: f64,
    #[serde(default = "PhysicsConfig::default_rho")]
    pub rho: f64,
    #[serde(default = "PhysicsConfig::default_alpha_d")]
    pub alpha_d: f64,
    /// Permeability jump of the checkerboard benchmark; only meaningful there.
    #[serde(default)]
    pub contrast: Option<f64>,
}

impl PhysicsConfig {
    fn default_mu() -> f64 {
        1.0
    }
    fn default_rho() -> f64 {
        1.0
    }
    fn default_alpha_d() -> f64 {
        1.0
    }
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        PhysicsConfig {
            mu: 1.0,
            rho: 1.0,
            alpha_d: 1.0,
            contrast: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkingToml {
    #[serde(default = "MarkingToml::default_theta")]
    pub theta: f64,
    #[serde(default = "MarkingToml::default_strategy")]
    pub strategy: String,
    #[serde(default = "MarkingToml::default_max_levels")]
    pub max_levels: usize,
    #[serde(default)]
    pub stop_theta: f64,
}

impl MarkingToml {
    fn default_theta() -> f64 {
        0.5
    }
    fn default_strategy() -> String {
        "dorfler".to_owned()
    }
    fn default_max_levels() -> usize {
        10
    }
}

impl Default for MarkingToml {
    fn default() -> Self {
        MarkingToml {
            theta: 0.5,
            strategy: "dorfler".to_owned(),
            max_levels: 10,
            stop_theta: 0.0,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverToml {
    #[serde(default = "SolverToml::default_picard_tol")]
    pub picard_tol: f64,
    #[serde(default = "SolverToml::default_picard_max_iters")]
    pub picard_max_iters: usize,
    #[serde(default = "SolverToml::default_damping")]
    pub damping: f64,
}

impl SolverToml {
    fn default_picard_tol() -> f64 {
        1e-10
    }
    fn default_picard_max_iters() -> usize {
        50
    }
    fn default_damping() -> f64 {
        1.0
    }
}

impl Default for SolverToml {
    fn default() -> Self {
        SolverToml {
            picard_tol: 1e-10,
            picard_max_iters: 50,
            damping: 1.0,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "OutputConfig::default_dir")]
    pub dir: PathBuf,
    #[serde(default = "OutputConfig::default_true")]
    pub vtk: bool,
    #[serde(default = "OutputConfig::default_true")]
    pub indicators: bool,
    /// Dump the assembled (gauged) linear system in MatrixMarket format.
    #[serde(default)]
    pub matrix: bool,
}

impl OutputConfig {
    fn default_dir() -> PathBuf {
        PathBuf::from("out")
    }
    fn default_true() -> bool {
        true
    }
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            vtk: true,
            indicators: true,
            matrix: false,
        }
    }
}

/// A full run description, read from TOML. Unknown keys are rejected.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Optional; when present it must agree with the CLI subcommand.
    #[serde(default)]
    pub mode: Option<String>,
    pub case: String,
    #[serde(default = "default_width")]
    pub width: f64,
    #[serde(default = "default_n0")]
    pub n0: usize,
    /// Number of uniform-study levels (n0 doubles per level).
    #[serde(default = "default_levels")]
    pub levels: usize,
    /// Indicator weighting: "verbatim" or "classic".
    #[serde(default = "default_estimator")]
    pub estimator: String,
    #[serde(default)]
    pub physics: PhysicsConfig,
    #[serde(default)]
    pub marking: MarkingToml,
    #[serde(default)]
    pub solver: SolverToml,
    #[serde(default)]
    pub output: OutputConfig,
}

/// The problem a validated configuration describes.
pub struct Problem {
    pub data: ProblemData,
    pub exact: Option<ExactSolution>,
    pub label: String,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig, ReportError> {
        toml::from_str(text).map_err(|e| ReportError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<RunConfig, ReportError> {
        let text = std::fs::read_to_string(path).map_err(|source| ReportError::Io {
            path: path.display().to_string(),
            source,
        })?;
        RunConfig::from_toml(&text)
    }

    /// Range-check every field and resolve the problem data. `mode` is the
    /// CLI-selected run mode the file must be compatible with.
    pub fn validate(&self, mode: RunMode) -> Result<Problem, ReportError> {
        let err = |msg: String| Err(ReportError::Config(msg));
        if let Some(m) = &self.mode {
            let parsed = RunMode::from_str(m).map_err(ReportError::Config)?;
            if parsed != mode {
                return err(format!(
                    "mode: file says '{}' but the subcommand requests '{}'",
                    m,
                    mode.name()
                ));
            }
        }
        if !(self.width > 0.0 && self.width.is_finite()) {
            return err(format!("width must be positive, got {}", self.width));
        }
        if self.n0 == 0 {
            return err("n0 must be at least 1".into());
        }
        if self.levels == 0 {
            return err("levels must be at least 1".into());
        }
        if !(self.physics.mu > 0.0) {
            return err(format!("physics.mu must be positive, got {}", self.physics.mu));
        }
        if !(self.physics.rho >= 0.0) {
            return err(format!(
                "physics.rho must be nonnegative, got {}",
                self.physics.rho
            ));
        }
        if !(self.physics.alpha_d > 0.0) {
            return err(format!(
                "physics.alpha_d must be positive, got {}",
                self.physics.alpha_d
            ));
        }
        if !(self.marking.theta > 0.0 && self.marking.theta <= 1.0) {
            return err(format!(
                "marking.theta must lie in (0, 1], got {}",
                self.marking.theta
            ));
        }
        if !(self.marking.stop_theta >= 0.0) {
            return err(format!(
                "marking.stop_theta must be nonnegative, got {}",
                self.marking.stop_theta
            ));
        }
        if !matches!(self.marking.strategy.as_str(), "dorfler" | "maximum") {
            return err(format!(
                "marking.strategy must be 'dorfler' or 'maximum', got '{}'",
                self.marking.strategy
            ));
        }
        if !(self.solver.picard_tol > 0.0) {
            return err(format!(
                "solver.picard_tol must be positive, got {}",
                self.solver.picard_tol
            ));
        }
        if self.solver.picard_max_iters == 0 {
            return err("solver.picard_max_iters must be at least 1".into());
        }
        if !(self.solver.damping > 0.0 && self.solver.damping <= 1.0) {
            return err(format!(
                "solver.damping must lie in (0, 1], got {}",
                self.solver.damping
            ));
        }
        if !matches!(self.estimator.as_str(), "verbatim" | "classic") {
            return err(format!(
                "estimator must be 'verbatim' or 'classic', got '{}'",
                self.estimator
            ));
        }

        if self.case == "checkerboard" {
            if mode == RunMode::UniformStudy {
                return err(
                    "case 'checkerboard' has no exact solution and cannot drive a uniform_study"
                        .into(),
                );
            }
            let contrast = self.physics.contrast.unwrap_or(1e4);
            if !(contrast > 0.0) {
                return err(format!(
                    "physics.contrast must be positive, got {contrast}"
                ));
            }
            let mut data = checkerboard_problem(self.width, contrast);
            data.mu = self.physics.mu;
            data.rho = self.physics.rho;
            data.alpha_d = self.physics.alpha_d;
            Ok(Problem {
                data,
                exact: None,
                label: format!("checkerboard (contrast {contrast})"),
            })
        } else {
            if self.physics.contrast.is_some() {
                return err(
                    "physics.contrast is only meaningful for the checkerboard case".into(),
                );
            }
            let case = Case::from_str(&self.case)
                .map_err(|e| ReportError::Config(format!("case: {e}")))?;
            let made = make_manufactured_params(
                case,
                self.width,
                self.physics.mu,
                self.physics.rho,
                self.physics.alpha_d,
            );
            Ok(Problem {
                data: made.data,
                exact: Some(made.exact),
                label: made.name.to_owned(),
            })
        }
    }

    pub fn marking_config(&self) -> MarkingConfig {
        MarkingConfig {
            theta: self.marking.theta,
            strategy: if self.marking.strategy == "maximum" {
                MarkingStrategy::Maximum
            } else {
                MarkingStrategy::Dorfler
            },
            max_levels: self.marking.max_levels,
            stop_theta: self.marking.stop_theta,
        }
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            picard_tol: self.solver.picard_tol,
            picard_max_iters: self.solver.picard_max_iters,
            damping: self.solver.damping,
            ..SolverConfig::default()
        }
    }

    pub fn weight_mode(&self) -> WeightMode {
        if self.estimator == "classic" {
            WeightMode::Classic
        } else {
            WeightMode::Verbatim
        }
    }
}

/// One row of a uniform convergence study.
#[derive(Clone, Copy, Debug)]
pub struct ConvergenceRecord {
    pub level: usize,
    pub h_max: f64,
    pub ndof: usize,
    pub us_h1: f64,
    pub ud_hdiv: f64,
    pub p_l2: f64,
    pub lambda_h_half: f64,
    pub composite: f64,
    pub theta: f64,
    pub zeta: f64,
    /// Θ / composite error; NaN when the error vanishes.
    pub effectivity: f64,
    /// Order against the previous level; `None` on the first row or for
    /// vanishing errors.
    pub eoc: Option<f64>,
}

impl ConvergenceRecord {
    fn build(
        level: usize,
        h_max: f64,
        ndof: usize,
        norms: &ErrorNorms,
        theta: f64,
        zeta: f64,
        prev: Option<&ConvergenceRecord>,
    ) -> ConvergenceRecord {
        let composite = norms.composite();
        let eoc = prev.and_then(|p| {
            (p.composite > 0.0 && composite > 0.0 && p.h_max > h_max)
                .then(|| norms::eoc(p.composite, composite, p.h_max, h_max))
        });
        ConvergenceRecord {
            level,
            h_max,
            ndof,
            us_h1: norms.us_h1,
            ud_hdiv: norms.ud_hdiv,
            p_l2: norms.p_l2,
            lambda_h_half: norms.lambda_h_half,
            composite,
            theta,
            zeta,
            effectivity: if composite > 0.0 {
                theta / composite
            } else {
                f64::NAN
            },
            eoc,
        }
    }
}

/// Solution state of one study or adaptive level, kept for file output.
pub struct LevelState {
    pub mesh: Mesh,
    pub dofs: DofMap,
    pub solution: DiscreteSolution,
    pub indicators: IndicatorField,
}

/// Solve on a sequence of uniformly refined meshes (n0 doubles per level)
/// and tabulate errors against the exact solution.
pub fn uniform_study(
    data: &ProblemData,
    exact: &ExactSolution,
    width: f64,
    n0: usize,
    levels: usize,
    solver: &SolverConfig,
    mode: WeightMode,
) -> Result<(Vec<ConvergenceRecord>, Vec<LevelState>), ReportError> {
    assert!(levels >= 1);
    let mut records: Vec<ConvergenceRecord> = Vec::with_capacity(levels);
    let mut states = Vec::with_capacity(levels);
    for level in 0..levels {
        let mesh = Mesh::structured(width, n0 << level)?;
        let dofs = DofMap::build(&mesh, data)?;
        let (solution, _) = solve_stationary(&mesh, &dofs, data, solver)?;
        let (indicators, summary) = assemble_indicators(&mesh, &dofs, &solution, data, mode);
        let errs = norms::compute_errors(&mesh, &dofs, &solution, exact);
        records.push(ConvergenceRecord::build(
            level,
            mesh.h_max(),
            dofs.n_total,
            &errs,
            summary.theta,
            summary.zeta,
            records.last(),
        ));
        states.push(LevelState {
            mesh,
            dofs,
            solution,
            indicators,
        });
    }
    Ok((records, states))
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Render a convergence table as CSV.
pub fn convergence_csv(records: &[ConvergenceRecord]) -> String {
    let mut s = String::from(
        "level,h_max,ndof,us_h1,ud_hdiv,p_l2,lambda_h_half,composite,theta,zeta,effectivity,eoc\n",
    );
    for r in records {
        let eoc = r.eoc.map(fmt_f64).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.level,
            fmt_f64(r.h_max),
            r.ndof,
            fmt_f64(r.us_h1),
            fmt_f64(r.ud_hdiv),
            fmt_f64(r.p_l2),
            fmt_f64(r.lambda_h_half),
            fmt_f64(r.composite),
            fmt_f64(r.theta),
            fmt_f64(r.zeta),
            fmt_f64(r.effectivity),
            eoc,
        );
    }
    s
}

/// Render an adaptive trace as CSV.
pub fn trace_csv(rows: &[AdaptiveLevel]) -> String {
    let mut s = String::from("level,nelem,ndof,theta,zeta,marked\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.level,
            r.nelem,
            r.ndof,
            fmt_f64(r.theta),
            fmt_f64(r.zeta),
            r.marked
        );
    }
    s
}

/// Render the per-element indicator breakdown as CSV.
pub fn indicators_csv(mesh: &Mesh, field: &IndicatorField) -> String {
    let mut s = String::from(
        "element_id,subdomain,theta_sq_total,residual_s,stress_jump,iface_normal_force,\
         iface_bjs,iface_mass,div_s,residual_d,curl_d,tangential_jump,iface_pressure,div_d,\
         zeta_sq\n",
    );
    for t in 0..mesh.triangles.len() {
        let sub = match mesh.triangles[t].subdomain {
            Subdomain::S => "S",
            Subdomain::D => "D",
        };
        let tt = &field.terms[t];
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            t,
            sub,
            fmt_f64(field.theta_sq[t]),
            fmt_f64(tt.residual_s),
            fmt_f64(tt.stress_jump),
            fmt_f64(tt.iface_normal_force),
            fmt_f64(tt.iface_bjs),
            fmt_f64(tt.iface_mass),
            fmt_f64(tt.div_s),
            fmt_f64(tt.residual_d),
            fmt_f64(tt.curl_d),
            fmt_f64(tt.tangential_jump),
            fmt_f64(tt.iface_pressure),
            fmt_f64(tt.div_d),
            fmt_f64(field.zeta_sq[t]),
        );
    }
    s
}

/// Render the mesh and solution as a legacy ASCII VTK unstructured grid:
/// velocities interpolated to the points, pressures and indicators on the
/// cells.
pub fn vtk_unstructured(
    mesh: &Mesh,
    dofs: &DofMap,
    sol: &DiscreteSolution,
    field: &IndicatorField,
    title: &str,
) -> String {
    let n = mesh.nodes.len();
    let m = mesh.triangles.len();
    // nodal velocity: average the elementwise velocity over the incident
    // elements (free-flow bubbles vanish at vertices, porous values are the
    // elementwise linear RT0 fields)
    let mut velocity = vec![crate::geom::Vec2::ZERO; n];
    let mut count = vec![0usize; n];
    for t in 0..m {
        let g = mesh.geom(t);
        for (k, &v) in mesh.triangles[t].vertices.iter().enumerate() {
            let val = match mesh.triangles[t].subdomain {
                Subdomain::S => {
                    let mut bary = [0.0; 3];
                    bary[k] = 1.0;
                    sol.eval_us(mesh, dofs, t, bary).0
                }
                Subdomain::D => sol.eval_ud(mesh, dofs, t, g.v[k]).0,
            };
            velocity[v] += val;
            count[v] += 1;
        }
    }

    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "{title}");
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {n} double");
    for p in &mesh.nodes {
        let _ = writeln!(s, "{} {} 0", fmt_f64(p.x), fmt_f64(p.y));
    }
    let _ = writeln!(s, "CELLS {m} {}", 4 * m);
    for tri in &mesh.triangles {
        let [a, b, c] = tri.vertices;
        let _ = writeln!(s, "3 {a} {b} {c}");
    }
    let _ = writeln!(s, "CELL_TYPES {m}");
    for _ in 0..m {
        let _ = writeln!(s, "5");
    }
    let _ = writeln!(s, "POINT_DATA {n}");
    let _ = writeln!(s, "VECTORS velocity double");
    for v in 0..n {
        let u = velocity[v] / count[v].max(1) as f64;
        let _ = writeln!(s, "{} {} 0", fmt_f64(u.x), fmt_f64(u.y));
    }
    let _ = writeln!(s, "CELL_DATA {m}");
    let _ = writeln!(s, "SCALARS pressure double 1");
    let _ = writeln!(s, "LOOKUP_TABLE default");
    for t in 0..m {
        let _ = writeln!(s, "{}", fmt_f64(sol.pressure(dofs, t)));
    }
    let _ = writeln!(s, "SCALARS indicator double 1");
    let _ = writeln!(s, "LOOKUP_TABLE default");
    for t in 0..m {
        let _ = writeln!(s, "{}", fmt_f64(field.theta_sq[t].sqrt()));
    }
    s
}

/// Contents of a VTK file written by [`vtk_unstructured`].
#[derive(Debug, Default)]
pub struct VtkContents {
    pub points: Vec<[f64; 3]>,
    pub cells: Vec<[usize; 3]>,
    pub cell_types: Vec<usize>,
    pub point_vectors: Vec<(String, Vec<[f64; 3]>)>,
    pub cell_scalars: Vec<(String, Vec<f64>)>,
}

/// Parse a legacy ASCII VTK unstructured grid back (round-trip check and
/// postprocessing aid).
pub fn read_vtk(text: &str) -> Result<VtkContents, ReportError> {
    let bad = |msg: &str| ReportError::Parse(format!("vtk: {msg}"));
    let mut out = VtkContents::default();
    let mut words = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if !line.starts_with("# vtk DataFile") {
                return Err(bad("missing header"));
            }
            continue;
        }
        if i == 1 {
            continue; // title
        }
        words.extend(line.split_whitespace().map(str::to_owned));
    }
    let mut pos = 0;
    let next = |pos: &mut usize, words: &[String]| -> Result<String, ReportError> {
        let w = words
            .get(*pos)
            .ok_or_else(|| bad("unexpected end of file"))?;
        *pos += 1;
        Ok(w.clone())
    };
    let parse_usize = |w: String| {
        w.parse::<usize>()
            .map_err(|_| bad(&format!("expected integer, got '{w}'")))
    };
    let parse_f64 = |w: String| {
        w.parse::<f64>()
            .map_err(|_| bad(&format!("expected number, got '{w}'")))
    };
    if next(&mut pos, &words)? != "ASCII" {
        return Err(bad("only ASCII files are supported"));
    }
    if next(&mut pos, &words)? != "DATASET" || next(&mut pos, &words)? != "UNSTRUCTURED_GRID" {
        return Err(bad("expected DATASET UNSTRUCTURED_GRID"));
    }
    let mut npoints = 0usize;
    let mut ncells = 0usize;
    while pos < words.len() {
        let section = next(&mut pos, &words)?;
        match section.as_str() {
            "POINTS" => {
                npoints = parse_usize(next(&mut pos, &words)?)?;
                let _ty = next(&mut pos, &words)?;
                for _ in 0..npoints {
                    let x = parse_f64(next(&mut pos, &words)?)?;
                    let y = parse_f64(next(&mut pos, &words)?)?;
                    let z = parse_f64(next(&mut pos, &words)?)?;
                    out.points.push([x, y, z]);
                }
            }
            "CELLS" => {
                ncells = parse_usize(next(&mut pos, &words)?)?;
                let _total = parse_usize(next(&mut pos, &words)?)?;
                for _ in 0..ncells {
                    let k = parse_usize(next(&mut pos, &words)?)?;
                    if k != 3 {
                        return Err(bad("only triangles are supported"));
                    }
                    let a = parse_usize(next(&mut pos, &words)?)?;
                    let b = parse_usize(next(&mut pos, &words)?)?;
                    let c = parse_usize(next(&mut pos, &words)?)?;
                    out.cells.push([a, b, c]);
                }
            }
            "CELL_TYPES" => {
                let k = parse_usize(next(&mut pos, &words)?)?;
                for _ in 0..k {
                    out.cell_types.push(parse_usize(next(&mut pos, &words)?)?);
                }
            }
            "POINT_DATA" => {
                let k = parse_usize(next(&mut pos, &words)?)?;
                if k != npoints {
                    return Err(bad("POINT_DATA count mismatch"));
                }
            }
            "CELL_DATA" => {
                let k = parse_usize(next(&mut pos, &words)?)?;
                if k != ncells {
                    return Err(bad("CELL_DATA count mismatch"));
                }
            }
            "VECTORS" => {
                let name = next(&mut pos, &words)?;
                let _ty = next(&mut pos, &words)?;
                let mut vals = Vec::with_capacity(npoints);
                for _ in 0..npoints {
                    let x = parse_f64(next(&mut pos, &words)?)?;
                    let y = parse_f64(next(&mut pos, &words)?)?;
                    let z = parse_f64(next(&mut pos, &words)?)?;
                    vals.push([x, y, z]);
                }
                out.point_vectors.push((name, vals));
            }
            "SCALARS" => {
                let name = next(&mut pos, &words)?;
                let _ty = next(&mut pos, &words)?;
                let _comps = next(&mut pos, &words)?;
                let lut = next(&mut pos, &words)?;
                if lut != "LOOKUP_TABLE" {
                    return Err(bad("expected LOOKUP_TABLE"));
                }
                let _table = next(&mut pos, &words)?;
                let mut vals = Vec::with_capacity(ncells);
                for _ in 0..ncells {
                    vals.push(parse_f64(next(&mut pos, &words)?)?);
                }
                out.cell_scalars.push((name, vals));
            }
            other => return Err(bad(&format!("unexpected section '{other}'"))),
        }
    }
    Ok(out)
}

/// Render a sparse system as a MatrixMarket coordinate file. Duplicate
/// triplets are summed; entries appear in column-sorted order.
pub fn matrix_market(sys: &SparseSystem) -> String {
    let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for &(i, j, v) in &sys.triplets {
        *merged.entry((j, i)).or_insert(0.0) += v;
    }
    let mut s = String::from("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(s, "{} {} {}", sys.n, sys.n, merged.len());
    for (&(j, i), &v) in &merged {
        let _ = writeln!(s, "{} {} {}", i + 1, j + 1, fmt_f64(v));
    }
    s
}

/// Write a string to `dir/name`, creating the directory first.
pub fn write_text(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, ReportError> {
    std::fs::create_dir_all(dir).map_err(|source| ReportError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(path)
}

fn write_level_artifacts(
    config: &RunConfig,
    out: &Path,
    level: usize,
    mesh: &Mesh,
    dofs: &DofMap,
    sol: &DiscreteSolution,
    field: &IndicatorField,
    label: &str,
) -> Result<(), ReportError> {
    if config.output.vtk {
        let vtk = vtk_unstructured(mesh, dofs, sol, field, label);
        write_text(out, &format!("level_{level}.vtk"), &vtk)?;
    }
    if config.output.indicators {
        let csv = indicators_csv(mesh, field);
        write_text(out, &format!("indicators_{level}.csv"), &csv)?;
    }
    Ok(())
}

/// Execute a validated configuration. Returns the lines printed as a summary.
pub fn execute(
    config: &RunConfig,
    mode: RunMode,
    out: &Path,
    weights: WeightMode,
) -> Result<Vec<String>, ReportError> {
    let problem = config.validate(mode)?;
    let solver = config.solver_config();
    let mut lines = Vec::new();
    match mode {
        RunMode::SingleSolve => {
            let mesh = Mesh::structured(config.width, config.n0)?;
            let dofs = DofMap::build(&mesh, &problem.data)?;
            let (solution, report) = solve_stationary(&mesh, &dofs, &problem.data, &solver)?;
            let (field, summary) =
                assemble_indicators(&mesh, &dofs, &solution, &problem.data, weights);
            write_level_artifacts(
                config, out, 0, &mesh, &dofs, &solution, &field, &problem.label,
            )?;
            if config.output.matrix {
                let frozen = (problem.data.rho > 0.0).then_some(&solution);
                let sys = apply_pressure_gauge(
                    &mesh,
                    &dofs,
                    assemble_forms(&mesh, &dofs, &problem.data, frozen),
                );
                write_text(out, "system.mtx", &matrix_market(&sys))?;
            }
            lines.push(format!(
                "{}: {} elements, {} dofs",
                problem.label,
                mesh.triangles.len(),
                dofs.n_total
            ));
            lines.push(format!(
                "picard iterations {}, residual {:.3e}, converged {}",
                report.iterations, report.discrete_residual_norm, report.converged
            ));
            lines.push(format!(
                "estimate {:.6e} (oscillation {:.6e})",
                summary.theta, summary.zeta
            ));
            if let Some(exact) = &problem.exact {
                let errs = norms::compute_errors(&mesh, &dofs, &solution, exact);
                lines.push(format!("composite error {:.6e}", errs.composite()));
            }
        }
        RunMode::UniformStudy => {
            let exact = problem.exact.as_ref().expect("validated above");
            let (records, states) = uniform_study(
                &problem.data,
                exact,
                config.width,
                config.n0,
                config.levels,
                &solver,
                weights,
            )?;
            write_text(out, "convergence.csv", &convergence_csv(&records))?;
            for (level, state) in states.iter().enumerate() {
                write_level_artifacts(
                    config,
                    out,
                    level,
                    &state.mesh,
                    &state.dofs,
                    &state.solution,
                    &state.indicators,
                    &problem.label,
                )?;
            }
            lines.push(format!(
                "{}: {} levels from n0 = {}",
                problem.label, config.levels, config.n0
            ));
            for r in &records {
                lines.push(format!(
                    "level {}: h {:.4e}, dofs {}, error {:.6e}, estimate {:.6e}, eoc {}",
                    r.level,
                    r.h_max,
                    r.ndof,
                    r.composite,
                    r.theta,
                    r.eoc.map(|e| format!("{e:.3}")).unwrap_or_else(|| "-".into()),
                ));
            }
        }
        RunMode::AdaptiveRun => {
            let mesh0 = Mesh::structured(config.width, config.n0)?;
            let marking = config.marking_config();
            let mut io_error: Option<ReportError> = None;
            let result = run_adaptive_with(
                mesh0,
                &problem.data,
                &marking,
                &solver,
                weights,
                &mut |level, mesh, dofs, sol, field| {
                    if io_error.is_none() {
                        if let Err(e) = write_level_artifacts(
                            config,
                            out,
                            level,
                            mesh,
                            dofs,
                            sol,
                            field,
                            &problem.label,
                        ) {
                            io_error = Some(e);
                        }
                    }
                },
            );
            if let Some(e) = io_error {
                return Err(e);
            }
            match result {
                Ok(outcome) => {
                    write_text(out, "trace.csv", &trace_csv(&outcome.trace))?;
                    lines.push(format!(
                        "{}: {} adaptive levels, final estimate {:.6e}",
                        problem.label,
                        outcome.trace.len(),
                        outcome.summary.theta
                    ));
                    for r in &outcome.trace {
                        lines.push(format!(
                            "level {}: {} elements, {} dofs, estimate {:.6e}, marked {}",
                            r.level, r.nelem, r.ndof, r.theta, r.marked
                        ));
                    }
                }
                Err(AdaptiveError::Solve {
                    level,
                    source,
                    trace,
                }) => {
                    // keep the completed part of the history around for
                    // postmortems, then surface the solver failure
                    write_text(out, "trace.csv", &trace_csv(&trace))?;
                    lines.push(format!("solver failed on level {level}"));
                    return Err(ReportError::Solve(source));
                }
                Err(AdaptiveError::Mesh(e)) => return Err(ReportError::Mesh(e)),
            }
        }
    }
    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{zero_scalar, zero_vec, Kappa};
    use std::sync::Arc;

    fn zero_problem(width: f64) -> (ProblemData, ExactSolution) {
        let data = ProblemData::homogeneous(width, 1.0, 0.0, 1.0, Kappa::Scalar(1.0));
        let exact = ExactSolution {
            u_s: zero_vec(),
            grad_u_s: Arc::new(|_| crate::geom::Mat2::ZERO),
            p_s: zero_scalar(),
            u_d: zero_vec(),
            div_u_d: zero_scalar(),
            p_d: zero_scalar(),
        };
        (data, exact)
    }

    #[test]
    fn zero_data_study_matches_the_golden_table() {
        let (data, exact) = zero_problem(1.0);
        let (records, _) = uniform_study(
            &data,
            &exact,
            1.0,
            1,
            2,
            &SolverConfig::default(),
            WeightMode::Verbatim,
        )
        .unwrap();
        let csv = convergence_csv(&records);
        let golden = "\
level,h_max,ndof,us_h1,ud_hdiv,p_l2,lambda_h_half,composite,theta,zeta,effectivity,eoc
0,1.4142135623730951,24,0,0,0,0,0,0,0,NaN,
1,0.7071067811865476,68,0,0,0,0,0,0,0,NaN,
";
        assert_eq!(csv, golden);
    }

    #[test]
    fn effectivity_column_recomputes_from_its_neighbors() {
        let (records, _) = study_smoke();
        let csv = convergence_csv(&records);
        for (i, line) in csv.lines().skip(1).enumerate() {
            let cols: Vec<&str> = line.split(',').collect();
            assert_eq!(cols.len(), 12);
            let composite: f64 = cols[7].parse().unwrap();
            let theta: f64 = cols[8].parse().unwrap();
            let effectivity: f64 = cols[10].parse().unwrap();
            assert!(
                (effectivity - theta / composite).abs() <= 1e-14 * effectivity.abs(),
                "row {i}"
            );
        }
    }

    fn study_smoke() -> (Vec<ConvergenceRecord>, Vec<LevelState>) {
        let made = make_manufactured_params(Case::StokesOnly, 1.0, 1.0, 0.0, 1.0);
        uniform_study(
            &made.data,
            &made.exact,
            1.0,
            2,
            2,
            &SolverConfig::default(),
            WeightMode::Verbatim,
        )
        .unwrap()
    }

    #[test]
    fn repeated_studies_render_identical_bytes() {
        let (r1, s1) = study_smoke();
        let (r2, s2) = study_smoke();
        assert_eq!(convergence_csv(&r1), convergence_csv(&r2));
        for (a, b) in s1.iter().zip(&s2) {
            assert_eq!(
                indicators_csv(&a.mesh, &a.indicators),
                indicators_csv(&b.mesh, &b.indicators)
            );
            assert_eq!(
                vtk_unstructured(&a.mesh, &a.dofs, &a.solution, &a.indicators, "t"),
                vtk_unstructured(&b.mesh, &b.dofs, &b.solution, &b.indicators, "t")
            );
        }
    }

    #[test]
    fn vtk_of_the_smallest_mesh_round_trips() {
        let (data, exact) = zero_problem(1.0);
        let mesh = Mesh::structured(1.0, 1).unwrap();
        let dofs = DofMap::build(&mesh, &data).unwrap();
        let sol = crate::dofs::interpolate(&exact, &mesh, &dofs);
        let (field, _) = assemble_indicators(&mesh, &dofs, &sol, &data, WeightMode::Verbatim);
        let text = vtk_unstructured(&mesh, &dofs, &sol, &field, "smallest mesh");
        assert!(text.contains("POINTS 6 double"));
        assert!(text.contains("CELLS 4 16"));

        let read = read_vtk(&text).unwrap();
        assert_eq!(read.points.len(), 6);
        assert_eq!(read.cells.len(), 4);
        assert!(read.cell_types.iter().all(|&t| t == 5));
        for (t, tri) in mesh.triangles.iter().enumerate() {
            assert_eq!(read.cells[t], tri.vertices);
        }
        assert_eq!(read.cell_scalars.len(), 2);
        let (ref pname, ref pvals) = read.cell_scalars[0];
        assert_eq!(pname, "pressure");
        for t in 0..4 {
            assert!(pvals[t] == sol.pressure(&dofs, t), "bit-exact cell data");
        }
        let (ref iname, ref ivals) = read.cell_scalars[1];
        assert_eq!(iname, "indicator");
        for t in 0..4 {
            assert!(ivals[t] == field.theta_sq[t].sqrt());
        }
    }

    #[test]
    fn matrix_market_sums_duplicates_in_sorted_order() {
        let sys = SparseSystem {
            n: 3,
            triplets: vec![(2, 0, 1.5), (0, 0, 1.0), (2, 0, 0.25), (1, 2, -3.0)],
            rhs: vec![0.0; 3],
            gauged: false,
        };
        let text = matrix_market(&sys);
        let expect = "\
%%MatrixMarket matrix coordinate real general
3 3 3
1 1 1
3 1 1.75
2 3 -3
";
        assert_eq!(text, expect);
    }

    #[test]
    fn unknown_configuration_keys_are_rejected_by_name() {
        let toml = "case = \"smooth_poly\"\nwidht = 2.0\n";
        let err = RunConfig::from_toml(toml).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("widht"), "message should name the key: {msg}");

        let toml = "case = \"smooth_poly\"\n[solver]\npicard_tols = 1e-8\n";
        let err = RunConfig::from_toml(toml).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("picard_tols"), "{msg}");
    }

    fn validation_message(toml: &str, mode: RunMode) -> String {
        let config = RunConfig::from_toml(toml).expect("config should parse");
        match config.validate(mode) {
            Ok(_) => panic!("validation should fail"),
            Err(e) => e.to_string(),
        }
    }

    #[test]
    fn out_of_range_values_are_rejected_by_name() {
        let msg = validation_message("case = \"smooth_poly\"\nwidth = -1.0\n", RunMode::SingleSolve);
        assert!(msg.contains("width"), "{msg}");

        let msg = validation_message(
            "case = \"smooth_poly\"\n[marking]\ntheta = 1.5\n",
            RunMode::AdaptiveRun,
        );
        assert!(msg.contains("marking.theta"), "{msg}");

        let msg = validation_message(
            "case = \"smooth_trig\"\nmode = \"uniform_study\"\n",
            RunMode::SingleSolve,
        );
        assert!(msg.contains("mode"), "{msg}");

        let msg = validation_message(
            "case = \"smooth_poly\"\n[physics]\ncontrast = 100.0\n",
            RunMode::SingleSolve,
        );
        assert!(msg.contains("contrast"), "{msg}");

        let msg = validation_message("case = \"checkerboard\"\n", RunMode::UniformStudy);
        assert!(msg.contains("checkerboard"), "{msg}");
    }

    #[test]
    fn checkerboard_single_solve_resolves_with_physics_overrides() {
        let toml = "\
case = \"checkerboard\"
width = 1.0
n0 = 2
[physics]
mu = 2.0
rho = 0.5
alpha_d = 1.5
contrast = 50.0
";
        let config = RunConfig::from_toml(toml).unwrap();
        let problem = config.validate(RunMode::SingleSolve).unwrap();
        assert!(problem.exact.is_none());
        assert_eq!(problem.data.mu, 2.0);
        assert_eq!(problem.data.rho, 0.5);
        assert_eq!(problem.data.alpha_d, 1.5);
    }
}
