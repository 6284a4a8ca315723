//! Problem catalog and convergence-study runner.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use crate::analysis::{
    conservation_indicator, convergence_rates, energy, multiplier_norm, norm_errors, DiscreteField,
    NormErrors, ReferenceField, Regions,
};
use crate::assembly::{assemble_system, SparseSystem};
use crate::error::{Error, Result};
use crate::exec::ExecutionMode;
use crate::geometry::Point;
use crate::mesh::{BoundaryKind, DualMesh, StructuredMesh, MAX_LEVEL};
use crate::problem::{ExactSolution, Forcing, PointSource, ProblemSpec};
use crate::solver::{solve_saddle, solve_unconstrained, Solution};
use crate::space::FeSpace;

/// Largest level accepted for `Q2` studies.
pub const MAX_LEVEL_Q2: u32 = 10;
/// Levels above the finest study level at which reference solutions are
/// computed for problems without a closed-form solution.
pub const REFERENCE_OFFSET: u32 = 2;

pub const CSV_HEADER: &str =
    "problem,method,degree,M,h,n_dofs,n_constraints,err_L1,err_L2,err_L2_corrected,\
err_H1,err_W11,err_Vh,seminorm_Vh,norm_lambda_Mh,energy,J_volumes,J_elements,rate_L2,rate_H1";

/// Smooth Dirichlet problem with exact solution
/// `p = sin(πx) sin(πy) (3y - x) + 1 + x + 2y`.
pub fn problem_example1() -> ProblemSpec {
    let q = |p: Point| {
        let (sx, cx, sy, cy) = trig(p);
        2.0 * PI * (cx * sy - 3.0 * sx * cy + PI * sx * sy * (-p.x + 3.0 * p.y))
    };
    let exact = ExactSolution {
        value: Arc::new(|p: Point| {
            let (sx, _, sy, _) = trig(p);
            sx * sy * (-p.x + 3.0 * p.y) + 1.0 + p.x + 2.0 * p.y
        }),
        gradient: Arc::new(|p: Point| {
            let (sx, cx, sy, cy) = trig(p);
            let g = -p.x + 3.0 * p.y;
            Point::new(
                PI * cx * sy * g - sx * sy + 1.0,
                PI * sx * cy * g + 3.0 * sx * sy + 2.0,
            )
        }),
        second_derivatives: Arc::new(|p: Point| {
            let (sx, cx, sy, cy) = trig(p);
            let g = -p.x + 3.0 * p.y;
            (
                -PI * PI * sx * sy * g - 2.0 * PI * cx * sy,
                -PI * PI * sx * sy * g + 6.0 * PI * sx * cy,
            )
        }),
    };
    ProblemSpec::new("example1", BoundaryKind::AllDirichlet, Forcing::smooth(q))
        .with_dirichlet(|p| 1.0 + p.x + 2.0 * p.y)
        .with_exact(exact)
}

fn trig(p: Point) -> (f64, f64, f64, f64) {
    let (sx, cx) = (PI * p.x).sin_cos();
    let (sy, cy) = (PI * p.y).sin_cos();
    (sx, cx, sy, cy)
}

/// Unit source at `(0, 0)` and unit sink at `(1, 1)`, no-flux boundary.
pub fn problem_neumann_singular() -> ProblemSpec {
    ProblemSpec::new(
        "neumann_singular",
        BoundaryKind::AllNeumann,
        Forcing::sources(vec![
            PointSource::new(0.0, 0.0, 1.0),
            PointSource::new(1.0, 1.0, -1.0),
        ]),
    )
}

/// `q = x - y` with no-flux boundary. The zero-mean solution is
/// `p = g(x) - g(y)` with `g(t) = t²/4 - t³/6`.
pub fn problem_neumann_smooth() -> ProblemSpec {
    fn g(t: f64) -> f64 {
        t * t / 4.0 - t * t * t / 6.0
    }
    fn dg(t: f64) -> f64 {
        t / 2.0 - t * t / 2.0
    }
    let exact = ExactSolution {
        value: Arc::new(|p: Point| g(p.x) - g(p.y)),
        gradient: Arc::new(|p: Point| Point::new(dg(p.x), -dg(p.y))),
        second_derivatives: Arc::new(|p: Point| (0.5 - p.x, p.y - 0.5)),
    };
    ProblemSpec::new(
        "neumann_smooth",
        BoundaryKind::AllNeumann,
        Forcing::smooth(|p| p.x - p.y),
    )
    .with_exact(exact)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProblemId {
    Example1,
    NeumannSingular,
    NeumannSmooth,
}

impl ProblemId {
    pub const ALL: [ProblemId; 3] = [
        ProblemId::Example1,
        ProblemId::NeumannSingular,
        ProblemId::NeumannSmooth,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProblemId::Example1 => "example1",
            ProblemId::NeumannSingular => "neumann_singular",
            ProblemId::NeumannSmooth => "neumann_smooth",
        }
    }

    pub fn spec(self) -> ProblemSpec {
        match self {
            ProblemId::Example1 => problem_example1(),
            ProblemId::NeumannSingular => problem_neumann_singular(),
            ProblemId::NeumannSmooth => problem_neumann_smooth(),
        }
    }
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProblemId::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown problem '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    /// Plain Galerkin.
    Fem,
    /// Galerkin with control-volume conservation constraints.
    Fv,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Fem => "fem",
            Method::Fv => "fv",
        }
    }

    pub fn solve(self, system: &SparseSystem) -> Result<Solution> {
        match self {
            Method::Fem => solve_unconstrained(system),
            Method::Fv => solve_saddle(system),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fem" => Ok(Method::Fem),
            "fv" => Ok(Method::Fv),
            _ => Err(Error::Parameter(format!("unknown method '{s}'"))),
        }
    }
}

/// Comma-separated method list, duplicates removed, order kept.
pub fn parse_methods(s: &str) -> Result<Vec<Method>> {
    let mut out = Vec::new();
    for m in s.split(',').map(str::trim).filter(|m| !m.is_empty()) {
        let m: Method = m.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    Ok(out)
}

/// `min:max`, or a single level.
pub fn parse_levels(s: &str) -> Result<(u32, u32)> {
    let bad = || Error::Parameter(format!("invalid level range '{s}' (expected min:max)"));
    let parse = |t: &str| t.trim().parse::<u32>().map_err(|_| bad());
    match s.split_once(':') {
        Some((a, b)) => Ok((parse(a)?, parse(b)?)),
        None => {
            let m = parse(s)?;
            Ok((m, m))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub problem: ProblemId,
    pub degree: usize,
    pub min_level: u32,
    pub max_level: u32,
    pub methods: Vec<Method>,
    /// Directory receiving one `x y value` file per solve.
    pub dump_fields: Option<PathBuf>,
    pub mode: ExecutionMode,
}

impl StudyConfig {
    pub fn new(
        problem: ProblemId,
        degree: usize,
        levels: (u32, u32),
        methods: Vec<Method>,
    ) -> Self {
        Self {
            problem,
            degree,
            min_level: levels.0,
            max_level: levels.1,
            methods,
            dump_fields: None,
            mode: ExecutionMode::Parallel,
        }
    }

    /// Level of the reference solution, for problems without an exact one.
    pub fn reference_level(&self) -> Option<u32> {
        self.problem
            .spec()
            .exact
            .is_none()
            .then_some(self.max_level + REFERENCE_OFFSET)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.degree) {
            return Err(Error::UnsupportedDegree(self.degree));
        }
        if self.min_level < 1 {
            return Err(Error::Parameter(
                "the coarsest level must be at least 1".into(),
            ));
        }
        if self.min_level > self.max_level {
            return Err(Error::Parameter(format!(
                "empty level range {}:{}",
                self.min_level, self.max_level
            )));
        }
        if self.methods.is_empty() {
            return Err(Error::Parameter("no method selected".into()));
        }
        let cap = if self.degree == 2 {
            MAX_LEVEL_Q2
        } else {
            MAX_LEVEL
        };
        let finest = self.reference_level().unwrap_or(self.max_level);
        if finest > cap {
            return Err(Error::Parameter(format!(
                "level {finest} exceeds the limit {cap} for degree {}",
                self.degree
            )));
        }
        Ok(())
    }
}

/// Everything produced by one solve.
pub struct LevelSolve {
    pub space: FeSpace,
    pub dual: DualMesh,
    pub system: SparseSystem,
    pub solution: Solution,
}

impl LevelSolve {
    /// The solution as a reference field; the constrained method
    /// contributes its corrected field `p_h + λ_h`.
    pub fn as_reference(&self, method: Method) -> DiscreteField<'_> {
        DiscreteField {
            space: &self.space,
            coeffs: &self.solution.p,
            multipliers: (method == Method::Fv)
                .then_some((&self.dual, self.solution.lambda.as_slice())),
        }
    }
}

/// Builds, assembles and solves one level.
pub fn solve_level(
    problem: &ProblemSpec,
    degree: usize,
    level: u32,
    method: Method,
    mode: ExecutionMode,
) -> Result<LevelSolve> {
    let mesh = StructuredMesh::new(level, problem.bc)?;
    let space = FeSpace::new(&mesh, degree)?;
    let dual = DualMesh::new(&mesh);
    let system = assemble_system(problem, &space, &dual, mode)?;
    let solution = method.solve(&system)?;
    Ok(LevelSolve {
        space,
        dual,
        system,
        solution,
    })
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub problem: ProblemId,
    pub method: Method,
    pub degree: usize,
    pub level: u32,
    pub h: f64,
    pub n_dofs: usize,
    pub n_constraints: usize,
    pub errors: NormErrors,
    pub norm_lambda: Option<f64>,
    pub energy: f64,
    pub j_volumes: f64,
    pub j_elements: f64,
    pub rate_l2: Option<f64>,
    pub rate_h1: Option<f64>,
}

fn field(v: Option<f64>) -> String {
    // Debug formatting is the shortest representation that round-trips
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

impl StudyRow {
    pub fn to_csv(&self) -> String {
        let e = &self.errors;
        let cols = [
            self.problem.to_string(),
            self.method.to_string(),
            self.degree.to_string(),
            self.level.to_string(),
            field(Some(self.h)),
            self.n_dofs.to_string(),
            self.n_constraints.to_string(),
            field(Some(e.l1)),
            field(Some(e.l2)),
            field(e.l2_corrected),
            field(Some(e.h1)),
            field(Some(e.w11)),
            field(Some(e.vh)),
            field(Some(e.vh_semi)),
            field(self.norm_lambda),
            field(Some(self.energy)),
            field(Some(self.j_volumes)),
            field(Some(self.j_elements)),
            field(self.rate_l2),
            field(self.rate_h1),
        ];
        cols.join(",")
    }
}

/// Analyses a solve against `reference`.
pub fn analyse(
    problem_id: ProblemId,
    problem: &ProblemSpec,
    method: Method,
    solve: &LevelSolve,
    reference: &dyn ReferenceField,
    mode: ExecutionMode,
) -> Result<StudyRow> {
    let LevelSolve {
        space,
        dual,
        solution,
        ..
    } = solve;
    let lambda = (method == Method::Fv).then_some((dual, solution.lambda.as_slice()));
    let errors = norm_errors(space, &solution.p, lambda, reference, mode)?;
    Ok(StudyRow {
        problem: problem_id,
        method,
        degree: space.degree(),
        level: space.mesh().level(),
        h: space.mesh().h(),
        n_dofs: space.n_dofs(),
        n_constraints: if method == Method::Fv { dual.len() } else { 0 },
        errors,
        norm_lambda: lambda.map(|(d, l)| multiplier_norm(d, l)),
        energy: energy(space, &solution.p, problem, mode)?,
        j_volumes: conservation_indicator(
            space,
            dual,
            &solution.p,
            problem,
            Regions::ControlVolumes,
            mode,
        )?,
        j_elements: conservation_indicator(
            space,
            dual,
            &solution.p,
            problem,
            Regions::Elements,
            mode,
        )?,
        rate_l2: None,
        rate_h1: None,
    })
}

/// Fills `rate_*` of each row from the next finer level of the same
/// method: `rate_M = log₂(e_M / e_{M+1})`.
pub fn fill_rates(rows: &mut [StudyRow]) {
    let methods: Vec<Method> = {
        let mut m: Vec<Method> = rows.iter().map(|r| r.method).collect();
        m.sort();
        m.dedup();
        m
    };
    for method in methods {
        let idx: Vec<usize> = (0..rows.len())
            .filter(|&i| rows[i].method == method)
            .collect();
        let l2: Vec<Option<f64>> = idx.iter().map(|&i| Some(rows[i].errors.l2)).collect();
        let h1: Vec<Option<f64>> = idx.iter().map(|&i| Some(rows[i].errors.h1)).collect();
        let (r2, r1) = (convergence_rates(&l2), convergence_rates(&h1));
        for (n, &i) in idx.iter().enumerate() {
            let consecutive = idx
                .get(n + 1)
                .is_some_and(|&j| rows[j].level == rows[i].level + 1);
            rows[i].rate_l2 = if consecutive { r2[n] } else { None };
            rows[i].rate_h1 = if consecutive { r1[n] } else { None };
        }
    }
}

/// Writes `x y value` for every DOF.
pub fn write_field<W: Write>(space: &FeSpace, coeffs: &[f64], mut out: W) -> std::io::Result<()> {
    for (d, v) in coeffs.iter().enumerate() {
        let p = space.dof_coords(d);
        writeln!(out, "{:?} {:?} {v:?}", p.x, p.y)?;
    }
    Ok(())
}

fn dump(dir: &Path, config: &StudyConfig, method: Method, solve: &LevelSolve) -> Result<()> {
    fs::create_dir_all(dir)?;
    let name = format!(
        "{}_{}_r{}_M{}.txt",
        config.problem,
        method,
        config.degree,
        solve.space.mesh().level()
    );
    let file = std::io::BufWriter::new(fs::File::create(dir.join(name))?);
    write_field(&solve.space, &solve.solution.p, file)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub rows: Vec<StudyRow>,
}

impl StudyReport {
    pub fn row(&self, method: Method, level: u32) -> Option<&StudyRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.level == level)
    }
}

/// A study that stopped early: the rows finished before the failure and
/// where it happened.
struct Partial {
    rows: Vec<StudyRow>,
    failure: Option<(Method, u32, Error)>,
}

fn collect_rows(config: &StudyConfig) -> Partial {
    let problem = config.problem.spec();
    let mode = config.mode;
    let mut rows = Vec::new();
    for &method in &config.methods {
        let fine = match config.reference_level() {
            Some(level) => match solve_level(&problem, config.degree, level, method, mode) {
                Ok(s) => Some(s),
                Err(e) => {
                    return Partial {
                        rows,
                        failure: Some((method, level, e)),
                    }
                }
            },
            None => None,
        };
        for level in config.min_level..=config.max_level {
            let row = solve_level(&problem, config.degree, level, method, mode).and_then(|solve| {
                let row = match (&problem.exact, &fine) {
                    (Some(exact), _) => {
                        analyse(config.problem, &problem, method, &solve, exact, mode)?
                    }
                    (None, Some(fine)) => analyse(
                        config.problem,
                        &problem,
                        method,
                        &solve,
                        &fine.as_reference(method),
                        mode,
                    )?,
                    (None, None) => return Err(Error::MissingExactSolution),
                };
                if let Some(dir) = &config.dump_fields {
                    dump(dir, config, method, &solve)?;
                }
                Ok(row)
            });
            match row {
                Ok(r) => rows.push(r),
                Err(e) => {
                    return Partial {
                        rows,
                        failure: Some((method, level, e)),
                    }
                }
            }
        }
    }
    Partial {
        rows,
        failure: None,
    }
}

fn finish_rows(mut rows: Vec<StudyRow>) -> Vec<StudyRow> {
    rows.sort_by_key(|r| (r.level, r.method));
    fill_rates(&mut rows);
    rows
}

/// Runs every (method, level) pair of `config`, coarse to fine.
pub fn run_study(config: &StudyConfig) -> Result<StudyReport> {
    config.validate()?;
    let partial = collect_rows(config);
    match partial.failure {
        Some((_, _, e)) => Err(e),
        None => Ok(StudyReport {
            rows: finish_rows(partial.rows),
        }),
    }
}

/// Runs the study and writes the CSV. On failure the rows finished before
/// the failing solve are kept, followed by a `# FAILED ...` line, and the
/// error is returned.
pub fn run_study_to_csv<W: Write>(config: &StudyConfig, mut out: W) -> Result<StudyReport> {
    config.validate()?;
    let partial = collect_rows(config);
    let rows = finish_rows(partial.rows);
    writeln!(out, "{CSV_HEADER}")?;
    for r in &rows {
        writeln!(out, "{}", r.to_csv())?;
    }
    let result = match partial.failure {
        Some((method, level, e)) => {
            writeln!(
                out,
                "# FAILED {} {method} degree={} M={level}: {e}",
                config.problem, config.degree
            )?;
            Err(e)
        }
        None => Ok(StudyReport { rows }),
    };
    out.flush()?;
    result
}

/// Flat `key = value` lines; blank lines and `#` comments are skipped.
/// Keys use the long CLI flag names, with `-` and `_` interchangeable.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Parameter(format!("config line {}: expected key=value", n + 1))
        })?;
        out.insert(k.trim().replace('_', "-"), v.trim().to_string());
    }
    Ok(out)
}
