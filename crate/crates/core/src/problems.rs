//! Built-in problem catalog, JSON problem specs and the suite runner.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::{
    default_pair, find_fixed_points, lifted_seeds, verify_duality, CertifyOptions, DualityInstance, DualityReport,
    DualitySetup,
};
use crate::error::{Error, Result};
use crate::field::{RhsKind, Term, TermTable, TimeFactor, VectorField};
use crate::operators::{build, sup, OperatorName, OperatorParams, Problem, ProblemKind, Reduction, Space};

pub const SPEC_VERSION: u32 = 1;
pub const REPORT_VERSION: &str = "rd-report/1";
pub const DEFAULT_SEED: u64 = 0x4B52;

/// Residual tolerance for the operator suite at the reference step `1/256`.
const OPERATOR_TOL: f64 = 5e-5;
const REFERENCE_INTERVALS: f64 = 256.0;

/// Right-hand side of a spec: a builtin id or an explicit term table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum RhsSpec {
    Builtin { id: String },
    Table { components: Vec<Vec<Term>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domains {
    /// Radius of the sup-norm ball `U1` about 0 in the function space.
    pub u1_radius: f64,
    /// Box `U2` in the finite space.
    pub u2_lo: Vec<f64>,
    pub u2_hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub version: u32,
    pub id: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub kind: ProblemKind,
    pub dim: usize,
    /// Period `T`, or the interval length for Dirichlet and nonlocal problems.
    pub period: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history_nodes: Option<usize>,
    pub rhs: RhsSpec,
    pub lipschitz: f64,
    pub grid: usize,
    pub domains: Domains,
    /// Values of `eta` for the sign suite.
    #[serde(default = "default_etas")]
    pub eta: Vec<f64>,
}

fn default_etas() -> Vec<f64> {
    vec![1.0, -1.0]
}

fn config(path: &str, message: impl Into<String>) -> Error {
    Error::Config { path: path.into(), message: message.into() }
}

fn cos2pi(c: f64) -> Term {
    Term::forcing(c, TimeFactor::Cos { omega: 2.0 * PI, phase: 0.0 })
}

/// Term tables of the builtin right-hand sides.
pub fn builtin_rhs(id: &str) -> Option<(RhsKind, TermTable)> {
    let table = |c: Vec<Vec<Term>>| TermTable { components: c };
    Some(match id {
        "linear_cos" => (RhsKind::FirstOrder, table(vec![vec![Term::state(-1.0, 0, 1), cos2pi(1.0)]])),
        "cubic" => (RhsKind::FirstOrder, table(vec![vec![Term::state(1.0, 0, 1), Term::state(-1.0, 0, 3)]])),
        "rotation_forced" => {
            (RhsKind::FirstOrder, table(vec![vec![Term::state(1.0, 1, 1)], vec![Term::state(-1.0, 0, 1), cos2pi(1.0)]]))
        }
        "dirichlet_linear" => (RhsKind::SecondOrder, table(vec![vec![Term::state(1.0, 0, 1)]])),
        "dirichlet_subresonant" => (RhsKind::SecondOrder, table(vec![vec![Term::state(-PI * PI / 2.0, 0, 1)]])),
        "dde_linear" => (
            RhsKind::Delay,
            table(vec![vec![
                Term::state(-1.0, 0, 1),
                Term::delayed(0.5, 0, 1),
                Term::forcing(1.0, TimeFactor::Sin { omega: 2.0 * PI, phase: 0.0 }),
            ]]),
        ),
        "nonlocal_cos" => (
            RhsKind::SecondOrder,
            table(vec![vec![Term::state(1.0, 0, 1), Term::forcing(1.0, TimeFactor::Cos { omega: 1.0, phase: 0.0 })]]),
        ),
        _ => return None,
    })
}

pub const BUILTIN_IDS: [&str; 7] = [
    "linear_cos",
    "cubic",
    "rotation_forced",
    "dirichlet_linear",
    "dirichlet_subresonant",
    "dde_linear",
    "nonlocal_cos",
];

#[allow(clippy::too_many_arguments)]
fn entry(
    id: &str,
    description: &str,
    kind: ProblemKind,
    dim: usize,
    period: f64,
    rhs: &str,
    lipschitz: f64,
    grid: usize,
    u1_radius: f64,
    lo: Vec<f64>,
    hi: Vec<f64>,
) -> ProblemSpec {
    ProblemSpec {
        version: SPEC_VERSION,
        id: id.into(),
        description: description.into(),
        kind,
        dim,
        period,
        tau: None,
        history_nodes: None,
        rhs: RhsSpec::Builtin { id: rhs.into() },
        lipschitz,
        grid,
        domains: Domains { u1_radius, u2_lo: lo, u2_hi: hi },
        eta: default_etas(),
    }
}

/// The built-in problems P1..P7.
pub fn catalog() -> Vec<ProblemSpec> {
    use ProblemKind::*;
    let mut p6 = entry(
        "P6",
        "x' = -x(t) + x(t - 1/2)/2 + sin(2 pi t), T = 1",
        PeriodicDde,
        1,
        1.0,
        "dde_linear",
        1.5,
        112,
        2.0,
        vec![-1.0; 8],
        vec![1.0; 8],
    );
    p6.tau = Some(0.5);
    p6.history_nodes = Some(8);
    vec![
        entry(
            "P1",
            "x' = -x + cos(2 pi t), T = 1",
            PeriodicOde,
            1,
            1.0,
            "linear_cos",
            1.0,
            256,
            2.5,
            vec![-1.0],
            vec![1.0],
        ),
        entry("P2", "x' = x - x^3, T = 1", PeriodicOde, 1, 1.0, "cubic", 11.0, 256, 2.0, vec![-2.0], vec![2.0]),
        entry(
            "P3",
            "x' = y, y' = -x + cos(2 pi t), T = 1",
            PeriodicOde,
            2,
            1.0,
            "rotation_forced",
            1.0,
            256,
            2.5,
            vec![-1.0; 2],
            vec![1.0; 2],
        ),
        entry(
            "P4",
            "x'' = x, x(0) = x(1) = 0",
            DirichletBvp,
            1,
            1.0,
            "dirichlet_linear",
            1.0,
            256,
            2.0,
            vec![-1.0; 2],
            vec![1.0; 2],
        ),
        entry(
            "P5",
            "x'' = -pi^2 x / 2, x(0) = x(1) = 0",
            DirichletBvp,
            1,
            1.0,
            "dirichlet_subresonant",
            PI * PI / 2.0,
            256,
            2.0,
            vec![-1.0; 2],
            vec![1.0; 2],
        ),
        p6,
        entry(
            "P7",
            "u'' = u + cos t on [0, 2 pi], u(0) = u(2 pi) constant, zero net flux",
            Nonlocal1d,
            1,
            2.0 * PI,
            "nonlocal_cos",
            1.0,
            256,
            2.0,
            vec![-1.5],
            vec![0.5],
        ),
    ]
}

/// Case-insensitive catalog lookup.
pub fn builtin(id: &str) -> Option<ProblemSpec> {
    catalog().into_iter().find(|p| p.id.eq_ignore_ascii_case(id))
}

impl ProblemSpec {
    /// Dimension of the finite space of the plain duality pair.
    pub fn finite_dim(&self) -> usize {
        match self.kind {
            ProblemKind::DirichletBvp => 2 * self.dim,
            ProblemKind::PeriodicDde => self.history_nodes.unwrap_or(0) * self.dim,
            _ => self.dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SPEC_VERSION {
            return Err(config("version", format!("unsupported version {}, expected {SPEC_VERSION}", self.version)));
        }
        if self.id.trim().is_empty() {
            return Err(config("id", "must not be empty"));
        }
        if self.dim == 0 {
            return Err(config("dim", "must be at least 1"));
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(config("period", format!("must be positive, got {}", self.period)));
        }
        if self.kind == ProblemKind::DirichletBvp && self.period != 1.0 {
            return Err(config("period", "Dirichlet problems live on [0, 1]"));
        }
        match (self.kind, self.tau, self.history_nodes) {
            (ProblemKind::PeriodicDde, Some(tau), Some(q)) => {
                if !(tau > 0.0 && tau <= self.period) {
                    return Err(config("tau", format!("must lie in (0, T] = (0, {}], got {tau}", self.period)));
                }
                if q < 2 {
                    return Err(config("history_nodes", "at least 2 nodes are needed"));
                }
            }
            (ProblemKind::PeriodicDde, None, _) => return Err(config("tau", "required for periodic_dde")),
            (ProblemKind::PeriodicDde, _, None) => return Err(config("history_nodes", "required for periodic_dde")),
            (_, Some(_), _) => {
                return Err(config("tau", format!("only periodic_dde takes a delay, not {}", self.kind)))
            }
            (_, _, Some(_)) => {
                return Err(config(
                    "history_nodes",
                    format!("only periodic_dde takes history nodes, not {}", self.kind),
                ))
            }
            _ => {}
        }
        if !(self.lipschitz >= 0.0 && self.lipschitz.is_finite()) {
            return Err(config("lipschitz", "must be finite and non-negative"));
        }
        if self.grid < 4 {
            return Err(config("grid", format!("need at least 4 intervals, got {}", self.grid)));
        }
        let (rhs_kind, table) = self.table()?;
        let expected = match self.kind {
            ProblemKind::PeriodicOde => RhsKind::FirstOrder,
            ProblemKind::PeriodicDde => RhsKind::Delay,
            _ => RhsKind::SecondOrder,
        };
        if rhs_kind != expected {
            return Err(config("rhs", format!("{} needs a {expected:?} right-hand side, got {rhs_kind:?}", self.kind)));
        }
        if table.dim() != self.dim {
            return Err(config("rhs.components", format!("{} components for dim {}", table.dim(), self.dim)));
        }
        let d = &self.domains;
        if !(d.u1_radius > 0.0 && d.u1_radius.is_finite()) {
            return Err(config("domains.u1_radius", format!("must be positive, got {}", d.u1_radius)));
        }
        let k = self.finite_dim();
        for (name, v) in [("domains.u2_lo", &d.u2_lo), ("domains.u2_hi", &d.u2_hi)] {
            if v.len() != k {
                return Err(config(name, format!("expected {k} entries, got {}", v.len())));
            }
        }
        if let Some(i) = (0..k).find(|&i| !(d.u2_lo[i] < d.u2_hi[i])) {
            return Err(config(&format!("domains.u2_lo[{i}]"), "box has empty interior"));
        }
        if let Some(i) = self.eta.iter().position(|e| *e == 0.0 || !e.is_finite()) {
            return Err(config(&format!("eta[{i}]"), "eta must be finite and non-zero"));
        }
        Ok(())
    }

    /// Resolved right-hand side. Tables infer their kind from delayed terms and the problem kind.
    fn table(&self) -> Result<(RhsKind, TermTable)> {
        match &self.rhs {
            RhsSpec::Builtin { id } => builtin_rhs(id)
                .ok_or_else(|| config("rhs.id", format!("unknown builtin `{id}` (known: {})", BUILTIN_IDS.join(", ")))),
            RhsSpec::Table { components } => {
                let table = TermTable { components: components.clone() };
                let kind = match self.kind {
                    ProblemKind::PeriodicOde if table.uses_delay() => RhsKind::Delay,
                    ProblemKind::PeriodicOde => RhsKind::FirstOrder,
                    ProblemKind::PeriodicDde => RhsKind::Delay,
                    _ => RhsKind::SecondOrder,
                };
                Ok((kind, table))
            }
        }
    }

    pub fn to_problem(&self) -> Result<Arc<Problem>> {
        self.validate()?;
        let (kind, table) = self.table()?;
        let field = VectorField::from_terms(kind, self.period, self.lipschitz, table)?;
        let problem = match self.kind {
            ProblemKind::PeriodicOde => Problem::periodic(field, self.grid)?,
            ProblemKind::DirichletBvp => Problem::dirichlet(field, self.grid)?,
            ProblemKind::PeriodicDde => {
                Problem::delay(field, self.tau.expect("validated"), self.grid, self.history_nodes.expect("validated"))?
            }
            ProblemKind::Nonlocal1d => Problem::nonlocal(field, self.grid)?,
        };
        Ok(Arc::new(problem))
    }

    pub fn setup(&self) -> Result<DualitySetup> {
        let d = &self.domains;
        Ok(DualitySetup::new(self.to_problem()?, d.u1_radius, d.u2_lo.clone(), d.u2_hi.clone()))
    }

    /// Instances a suite runs on this problem.
    pub fn instances(&self, suite: Suite) -> Vec<DualityInstance> {
        use DualityInstance::*;
        let duality: Vec<DualityInstance> = match self.kind {
            ProblemKind::PeriodicOde => vec![PeriodicKp, PeriodicChain],
            ProblemKind::DirichletBvp => vec![DirichletShooting],
            ProblemKind::PeriodicDde => vec![DelayKp],
            ProblemKind::Nonlocal1d => vec![NonlocalKk1],
        };
        let signs: Vec<DualityInstance> = match self.kind {
            ProblemKind::PeriodicOde => {
                self.eta.iter().map(|&eta| EtaSign { eta }).chain(std::iter::once(InversePoincare)).collect()
            }
            ProblemKind::DirichletBvp => vec![DirichletOrientation],
            _ => vec![],
        };
        match suite {
            Suite::All => duality.into_iter().chain(signs).collect(),
            Suite::Duality => duality,
            Suite::Signs => signs,
            Suite::Operators => vec![],
        }
    }
}

/// Reads and validates a JSON problem spec. Errors name the offending field.
pub fn load_problem(path: &Path) -> Result<ProblemSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_problem(&text)
}

pub fn parse_problem(text: &str) -> Result<ProblemSpec> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let spec: ProblemSpec = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Config { path: if path == "." { "$".into() } else { path }, message: e.into_inner().to_string() }
    })?;
    spec.validate()?;
    Ok(spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    All,
    Duality,
    Signs,
    Operators,
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::All => "all",
            Suite::Duality => "duality",
            Suite::Signs => "signs",
            Suite::Operators => "operators",
        })
    }
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "all" => Ok(Suite::All),
            "duality" => Ok(Suite::Duality),
            "signs" => Ok(Suite::Signs),
            "operators" => Ok(Suite::Operators),
            _ => Err(config("suite", format!("unknown suite `{s}` (all, duality, signs, operators)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Overrides the problem's grid.
    pub grid: Option<usize>,
    /// Replaces the problem's list of eta values.
    pub eta: Option<f64>,
    pub seed: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { grid: None, eta: None, seed: DEFAULT_SEED }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub start: f64,
    pub end: f64,
    pub intervals: usize,
    pub step: f64,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history_nodes: Option<usize>,
}

/// Residual of a catalog operator at a computed solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorCheck {
    pub operator: String,
    pub solution: usize,
    pub residual: f64,
    pub tolerance: f64,
    pub ok: bool,
}

/// Wall-clock timings; excluded from determinism comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Timings {
    pub total_ms: f64,
    pub instances_ms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format_version: String,
    pub problem: String,
    pub kind: ProblemKind,
    pub suite: Suite,
    pub seed: u64,
    pub grid: GridMeta,
    pub pairs: Vec<String>,
    pub duality: Vec<DualityReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub operator_checks: Vec<OperatorCheck>,
    pub verdict: bool,
    pub timings: Timings,
}

impl RunReport {
    /// Copy with the timing fields zeroed, for byte comparisons.
    pub fn without_timings(&self) -> RunReport {
        RunReport { timings: Timings::default(), ..self.clone() }
    }

    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        for d in &self.duality {
            if !d.verdict() {
                let mut why = d.diagnostics.clone();
                if d.left.certified && d.right.certified && !d.equal {
                    why.push(format!(
                        "degrees differ: left {} vs {} x right {}",
                        d.left.degree, d.factor, d.right.degree
                    ));
                }
                for c in d.certificates.iter().filter(|c| !c.admissible) {
                    why.push(format!("certificate {} not admissible (min residual {:e})", c.label, c.min_residual));
                }
                for r in d.residuals.iter().filter(|r| r.residual > OPERATOR_TOL) {
                    why.push(format!("{} residual {:e}", r.operator, r.residual));
                }
                out.push(format!("{} {}: {}", self.problem, d.pair, why.join("; ")));
            }
        }
        for c in self.operator_checks.iter().filter(|c| !c.ok) {
            out.push(format!(
                "{} {}: residual {:e} above {:e} at solution {}",
                self.problem, c.operator, c.residual, c.tolerance, c.solution
            ));
        }
        out
    }
}

fn operators_for(kind: ProblemKind) -> Vec<(OperatorName, OperatorParams)> {
    use OperatorName::*;
    let plain = |names: &[OperatorName]| names.iter().map(|&n| (n, OperatorParams::default())).collect::<Vec<_>>();
    match kind {
        ProblemKind::PeriodicOde => {
            let mut v = plain(&[K, K1, K2, K3, K4, K5, Kgamma, KhatP, Khat3, Khat5]);
            v.push((Keta, OperatorParams::eta(1.0)));
            v.push((Keta, OperatorParams::eta(-1.0)));
            v
        }
        ProblemKind::DirichletBvp => plain(&[Kdir, Kdir1, Kdir2, Ktilde, Kg]),
        ProblemKind::PeriodicDde => plain(&[Kdelay, Kdelay1, Kdelay2, K6, K7, K8]),
        ProblemKind::Nonlocal1d => plain(&[K, K1, K2]),
    }
}

/// Residuals of every compatible catalog operator at each solution of `K` in `U1`.
pub fn operator_checks(setup: &DualitySetup, opts: &CertifyOptions) -> Result<Vec<OperatorCheck>> {
    let problem = setup.problem.clone();
    let (k, finite, reduction) = default_pair(&problem)?;
    let kh = build(k, problem.clone(), OperatorParams::default())?;
    let fh = crate::operators::build_finite(finite, problem.clone())?;
    let ffp = find_fixed_points(&fh, &setup.u2, &[], opts)?;
    let seeds = lifted_seeds(&problem, reduction, &ffp)?;
    let sols = find_fixed_points(&kh, &setup.u1, &seeds, opts)?;
    // O(h^2) integrator error relative to the reference step
    let h = problem.grid().step();
    let base = OPERATOR_TOL * (h * REFERENCE_INTERVALS).powi(2).max(1.0);
    let mut out = Vec::new();
    for (j, x) in sols.points().enumerate() {
        let elem = kh.space().unflatten(x)?;
        let history = history_interpolation_bound(&problem, &elem)?;
        for (name, params) in operators_for(problem.kind()) {
            let h = build(name, problem.clone(), params)?;
            let v = match h.space() {
                Space::Vector { .. } => {
                    let r = match name {
                        OperatorName::Kg => Reduction::DirichletSlope,
                        _ => reduction,
                    };
                    r.project(&problem, &elem)?
                }
                space => {
                    let mut v = x.clone();
                    v.truncate(space.flat_len());
                    v
                }
            };
            let residual = sup(&h.defect_flat(&v)?);
            let tolerance = match name {
                OperatorName::Kdelay1 | OperatorName::Kdelay2 => base + history,
                _ => base,
            };
            out.push(OperatorCheck {
                operator: h.label(),
                solution: j,
                residual,
                tolerance,
                ok: residual <= tolerance,
            });
        }
    }
    if sols.zeros.is_empty() {
        out.push(OperatorCheck {
            operator: k.to_string(),
            solution: 0,
            residual: f64::MAX,
            tolerance: base,
            ok: false,
        });
    }
    Ok(out)
}

/// `e^{L T} Δ^2 max|x''| / 8`: the piecewise-linear history through nodes `Δ`
/// apart misses `x` by at most `Δ^2 max|x''| / 8`, and the flow can amplify that
/// by `e^{L T}`. Zero for problems without a delay.
fn history_interpolation_bound(problem: &Problem, x: &crate::operators::Element) -> Result<f64> {
    let Some(kernel) = problem.kernel() else { return Ok(0.0) };
    let x = x.as_grid()?;
    let (h, n, m) = (problem.grid().step(), x.dim(), problem.grid().intervals());
    let mut curvature: f64 = 0.0;
    for j in 1..m {
        for i in 0..n {
            let d2 = (x.at(j + 1)[i] - 2.0 * x.at(j)[i] + x.at(j - 1)[i]) / (h * h);
            curvature = curvature.max(d2.abs());
        }
    }
    let spacing = kernel.tau() / (problem.history_nodes() - 1) as f64;
    let growth = (problem.field().lipschitz() * problem.grid().len()).exp();
    Ok(growth * spacing * spacing * curvature / 8.0)
}

/// Runs a suite on one problem. Instances run in parallel; the report keeps their order.
pub fn run(spec: &ProblemSpec, suite: Suite, options: &RunOptions) -> Result<RunReport> {
    let start = Instant::now();
    let mut spec = spec.clone();
    if let Some(m) = options.grid {
        spec.grid = m;
    }
    if let Some(eta) = options.eta {
        spec.eta = vec![eta];
    }
    spec.validate()?;
    let setup = spec.setup()?;
    let opts = CertifyOptions::with_seed(options.seed);
    let instances = spec.instances(suite);

    let results: Vec<(DualityReport, f64)> = instances
        .par_iter()
        .map(|&inst| {
            let t0 = Instant::now();
            let r = verify_duality(&setup, inst, &opts)?;
            Ok((r, t0.elapsed().as_secs_f64() * 1e3))
        })
        .collect::<Result<_>>()?;
    let operator_checks =
        if matches!(suite, Suite::All | Suite::Operators) { operator_checks(&setup, &opts)? } else { vec![] };

    let grid = setup.problem.grid();
    let verdict = results.iter().all(|(r, _)| r.verdict()) && operator_checks.iter().all(|c| c.ok);
    Ok(RunReport {
        format_version: REPORT_VERSION.into(),
        problem: spec.id.clone(),
        kind: spec.kind,
        suite,
        seed: options.seed,
        grid: GridMeta {
            start: grid.start(),
            end: grid.end(),
            intervals: grid.intervals(),
            step: grid.step(),
            dim: spec.dim,
            tau: spec.tau,
            history_nodes: spec.history_nodes,
        },
        pairs: instances.iter().map(|i| i.label()).collect(),
        timings: Timings {
            total_ms: start.elapsed().as_secs_f64() * 1e3,
            instances_ms: results.iter().map(|(_, t)| *t).collect(),
        },
        duality: results.into_iter().map(|(r, _)| r).collect(),
        operator_checks,
        verdict,
    })
}
