//! Fixed-point operator catalog.
//!
//! Every operator acts on one of three discretized spaces: grid functions on
//! `[0, T]` (optionally flagged periodic, standing in for `C_T`), `C^1`
//! elements carried as value and slope tracks, or plain vectors. Handles are
//! immutable; `apply` is a pure function of its input.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{RhsKind, VectorField};
use crate::flows;
use crate::gridfn::{
    average, cumulative_integral, double_cumulative_integral, nemytskii, nemytskii_delay, C1Function, DelayKernel,
    Grid, GridFunction,
};

/// Which boundary value problem a [`Problem`] poses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    PeriodicOde,
    DirichletBvp,
    PeriodicDde,
    #[serde(rename = "nonlocal_1d")]
    Nonlocal1d,
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ProblemKind::PeriodicOde => "periodic_ode",
            ProblemKind::DirichletBvp => "dirichlet_bvp",
            ProblemKind::PeriodicDde => "periodic_dde",
            ProblemKind::Nonlocal1d => "nonlocal_1d",
        };
        f.write_str(s)
    }
}

/// A vector field together with the interval and boundary conditions it is posed with.
#[derive(Debug, Clone)]
pub struct Problem {
    kind: ProblemKind,
    field: VectorField,
    grid: Grid,
    kernel: Option<DelayKernel>,
    history_nodes: usize,
}

impl Problem {
    /// `x' = f(t, x)`, `x(0) = x(T)`, on `m` steps of `[0, T]`.
    pub fn periodic(field: VectorField, m: usize) -> Result<Self> {
        expect_kind(&field, RhsKind::FirstOrder, ProblemKind::PeriodicOde)?;
        let grid = Grid::new(0.0, field.period(), m)?;
        Ok(Problem { kind: ProblemKind::PeriodicOde, field, grid, kernel: None, history_nodes: 0 })
    }

    /// `x'' = f(t, x)`, `x(0) = x(1) = 0`.
    pub fn dirichlet(field: VectorField, m: usize) -> Result<Self> {
        expect_kind(&field, RhsKind::SecondOrder, ProblemKind::DirichletBvp)?;
        let grid = Grid::new(0.0, 1.0, m)?;
        Ok(Problem { kind: ProblemKind::DirichletBvp, field, grid, kernel: None, history_nodes: 0 })
    }

    /// `x'(t) = f(t, x(t), x(t - tau))` with `x_0 = x_T`. The history space
    /// `C[-tau, 0]` is discretized by `history_nodes` equally spaced values,
    /// which must sit on grid nodes.
    pub fn delay(field: VectorField, tau: f64, m: usize, history_nodes: usize) -> Result<Self> {
        expect_kind(&field, RhsKind::Delay, ProblemKind::PeriodicDde)?;
        let grid = Grid::new(0.0, field.period(), m)?;
        let kernel = DelayKernel::new(tau, field.period())?;
        let shift = kernel.shift_on(&grid)?;
        if history_nodes < 2 || shift % (history_nodes - 1) != 0 {
            return Err(Error::InvalidDelay(format!(
                "{history_nodes} history nodes do not divide the {shift} grid steps of one delay"
            )));
        }
        Ok(Problem { kind: ProblemKind::PeriodicDde, field, grid, kernel: Some(kernel), history_nodes })
    }

    /// `u'' = f(t, u)` on `[0, L]` with `u(0) = u(L)` and `u'(L) = u'(0)`, where `L` is the field period.
    pub fn nonlocal(field: VectorField, m: usize) -> Result<Self> {
        expect_kind(&field, RhsKind::SecondOrder, ProblemKind::Nonlocal1d)?;
        let grid = Grid::new(0.0, field.period(), m)?;
        Ok(Problem { kind: ProblemKind::Nonlocal1d, field, grid, kernel: None, history_nodes: 0 })
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn field(&self) -> &VectorField {
        &self.field
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    pub fn kernel(&self) -> Option<&DelayKernel> {
        self.kernel.as_ref()
    }

    pub fn history_nodes(&self) -> usize {
        self.history_nodes
    }

    /// Same problem with `amplitude * cos(2 pi t / T)` added to the field.
    pub fn perturbed(&self, amplitude: f64) -> Problem {
        Problem { field: self.field.with_forcing(amplitude), ..self.clone() }
    }

    fn delay_shift(&self) -> Result<(DelayKernel, usize, usize)> {
        let kernel = self
            .kernel
            .ok_or_else(|| Error::IncompatibleProblem { operator: "delay map".into(), kind: self.kind.to_string() })?;
        let shift = kernel.shift_on(&self.grid)?;
        Ok((kernel, shift, shift / (self.history_nodes - 1)))
    }
}

fn expect_kind(field: &VectorField, kind: RhsKind, problem: ProblemKind) -> Result<()> {
    if field.kind() != kind {
        return Err(Error::Config {
            path: "rhs.kind".into(),
            message: format!("{problem} needs a {kind:?} field, got {:?}", field.kind()),
        });
    }
    Ok(())
}

/// Discretized space an operator acts on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Space {
    Grid { grid: Grid, dim: usize, periodic: bool },
    C1 { grid: Grid, dim: usize },
    Vector { dim: usize },
}

impl Space {
    /// Length of the flat coordinate vector. Periodic grid spaces drop the
    /// duplicated last node.
    pub fn flat_len(&self) -> usize {
        match *self {
            Space::Grid { grid, dim, periodic } => (grid.nodes_count() - periodic as usize) * dim,
            Space::C1 { grid, dim } => 2 * grid.nodes_count() * dim,
            Space::Vector { dim } => dim,
        }
    }

    pub fn unflatten(&self, v: &[f64]) -> Result<Element> {
        if v.len() != self.flat_len() {
            return Err(Error::DimMismatch { expected: self.flat_len(), got: v.len() });
        }
        match *self {
            Space::Grid { grid, dim, periodic: false } => Ok(Element::Grid(GridFunction::new(grid, dim, v.to_vec())?)),
            Space::Grid { grid, dim, periodic: true } => {
                let mut values = v.to_vec();
                values.extend_from_slice(&v[..dim]);
                Ok(Element::Grid(GridFunction::new(grid, dim, values)?.into_periodic()?))
            }
            Space::C1 { grid, dim } => {
                let half = v.len() / 2;
                Ok(Element::C1(C1Function::new(
                    GridFunction::new(grid, dim, v[..half].to_vec())?,
                    GridFunction::new(grid, dim, v[half..].to_vec())?,
                )?))
            }
            Space::Vector { .. } => {
                crate::error::ensure_finite(v, || "vector element".into())?;
                Ok(Element::Vector(v.to_vec()))
            }
        }
    }

    pub fn zero(&self) -> Element {
        self.unflatten(&vec![0.0; self.flat_len()]).expect("zero is a valid element")
    }

    fn describe(&self) -> String {
        match self {
            Space::Grid { periodic: true, dim, .. } => format!("C_T grid functions (n={dim})"),
            Space::Grid { dim, .. } => format!("grid functions (n={dim})"),
            Space::C1 { dim, .. } => format!("C1 grid functions (n={dim})"),
            Space::Vector { dim } => format!("R^{dim}"),
        }
    }
}

/// A point of one of the discretized spaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Element {
    Grid(GridFunction),
    C1(C1Function),
    Vector(Vec<f64>),
}

impl Element {
    pub fn space(&self) -> Space {
        match self {
            Element::Grid(x) => Space::Grid { grid: *x.grid(), dim: x.dim(), periodic: x.is_periodic() },
            Element::C1(x) => Space::C1 { grid: *x.grid(), dim: x.dim() },
            Element::Vector(v) => Space::Vector { dim: v.len() },
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        match self {
            Element::Grid(x) if x.is_periodic() => x.values()[..x.values().len() - x.dim()].to_vec(),
            Element::Grid(x) => x.values().to_vec(),
            Element::C1(x) => {
                let mut v = x.value.values().to_vec();
                v.extend_from_slice(x.slope.values());
                v
            }
            Element::Vector(v) => v.clone(),
        }
    }

    /// Sup norm; for `C^1` elements the larger of the value and slope sup norms.
    pub fn norm(&self) -> f64 {
        sup(&self.flatten())
    }

    pub fn as_grid(&self) -> Result<&GridFunction> {
        match self {
            Element::Grid(x) => Ok(x),
            other => Err(Error::SpaceMismatch(format!("expected a grid function, got {}", other.space().describe()))),
        }
    }

    pub fn as_c1(&self) -> Result<&C1Function> {
        match self {
            Element::C1(x) => Ok(x),
            other => Err(Error::SpaceMismatch(format!("expected a C1 element, got {}", other.space().describe()))),
        }
    }

    pub fn as_vector(&self) -> Result<&[f64]> {
        match self {
            Element::Vector(v) => Ok(v),
            other => Err(Error::SpaceMismatch(format!("expected a vector, got {}", other.space().describe()))),
        }
    }
}

pub(crate) fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc: f64, x| acc.max(x.abs()))
}

/// Names of the operators in the catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OperatorName {
    K0,
    K,
    K1,
    K2,
    K3,
    K4,
    K5,
    Kgamma,
    Keta,
    KhatP,
    Khat3,
    Khat5,
    Kdir,
    Kdir1,
    Kdir2,
    Ktilde,
    Kg,
    Kdelay,
    Kdelay1,
    Kdelay2,
    K6,
    K7,
    K8,
}

impl OperatorName {
    pub const ALL: [OperatorName; 23] = [
        OperatorName::K0,
        OperatorName::K,
        OperatorName::K1,
        OperatorName::K2,
        OperatorName::K3,
        OperatorName::K4,
        OperatorName::K5,
        OperatorName::Kgamma,
        OperatorName::Keta,
        OperatorName::KhatP,
        OperatorName::Khat3,
        OperatorName::Khat5,
        OperatorName::Kdir,
        OperatorName::Kdir1,
        OperatorName::Kdir2,
        OperatorName::Ktilde,
        OperatorName::Kg,
        OperatorName::Kdelay,
        OperatorName::Kdelay1,
        OperatorName::Kdelay2,
        OperatorName::K6,
        OperatorName::K7,
        OperatorName::K8,
    ];

    /// Resolves the generic names `K`, `K1`, `K2` to the problem-specific
    /// variant so dispatch only deals with canonical names.
    fn canonical(self, kind: ProblemKind) -> OperatorName {
        use OperatorName::*;
        match (kind, self) {
            (ProblemKind::DirichletBvp, K) => Kdir,
            (ProblemKind::DirichletBvp, K1) => Kdir1,
            (ProblemKind::DirichletBvp, K2) => Kdir2,
            (ProblemKind::PeriodicDde, K) => Kdelay,
            (ProblemKind::PeriodicDde, K1) => Kdelay1,
            (ProblemKind::PeriodicDde, K2) => Kdelay2,
            (_, name) => name,
        }
    }
}

impl fmt::Display for OperatorName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl std::str::FromStr for OperatorName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OperatorName::ALL
            .iter()
            .copied()
            .find(|n| n.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config { path: "operator".into(), message: format!("unknown operator {s}") })
    }
}

/// Sign twist applied to the boundary map `delta`.
///
/// Periodic problems use `const_block`: `pi(x) = x(0) + s (x(T) - x(0))`.
/// Dirichlet problems twist both blocks of `ker L = {ta + b}`:
/// `pi(x) = t (x'(0) + s_t x(1)) + (1 + s_c) x(0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub t_block: f64,
    pub const_block: f64,
}

impl Default for Theta {
    fn default() -> Self {
        Theta { t_block: 1.0, const_block: 1.0 }
    }
}

impl Theta {
    pub fn reversed() -> Self {
        Theta { t_block: 1.0, const_block: -1.0 }
    }

    pub fn flipped_slope() -> Self {
        Theta { t_block: -1.0, const_block: 1.0 }
    }

    fn validate(&self) -> Result<()> {
        for s in [self.t_block, self.const_block] {
            if s != 1.0 && s != -1.0 {
                return Err(Error::Config {
                    path: "theta".into(),
                    message: format!("blocks must be +1 or -1, got {s}"),
                });
            }
        }
        Ok(())
    }
}

/// Linear maps onto (or into) `ker L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProjectorKind {
    EvalAt0,
    EvalAtT,
    Mean,
    KerLPeriodic,
    KerLDirichlet,
    DeltaPeriodic,
    DeltaDirichlet,
    PiSum,
    /// `x ↦ Σ_j w_j x(t_j)` as a constant function.
    CustomLinear {
        weights: Vec<f64>,
    },
}

/// A [`ProjectorKind`] bound to a problem; construction checks it on probes.
#[derive(Debug, Clone)]
pub struct Projector {
    kind: ProjectorKind,
    problem: Arc<Problem>,
}

const PROBE_TOL: f64 = 1e-12;

impl Projector {
    pub fn new(kind: ProjectorKind, problem: Arc<Problem>) -> Result<Self> {
        use ProjectorKind::*;
        let c1 = matches!(problem.kind, ProblemKind::DirichletBvp | ProblemKind::Nonlocal1d);
        let fits = match &kind {
            KerLDirichlet | DeltaDirichlet => problem.kind == ProblemKind::DirichletBvp,
            PiSum => true,
            _ => !c1,
        };
        if !fits {
            return Err(Error::NotProjector(format!("{kind:?} is not defined for {}", problem.kind)));
        }
        let p = Projector { kind, problem };
        p.check()?;
        Ok(p)
    }

    pub fn kind(&self) -> &ProjectorKind {
        &self.kind
    }

    pub fn space(&self) -> Space {
        function_space(&self.problem, false)
    }

    fn probes(&self) -> Vec<Element> {
        let space = self.space();
        let len = space.flat_len();
        (0..3)
            .map(|k| {
                let v: Vec<f64> =
                    (0..len).map(|i| ((i as f64 + 1.0) * (0.37 + k as f64)).sin() + 0.1 * k as f64).collect();
                space.unflatten(&v).expect("probe fits the space")
            })
            .collect()
    }

    fn check(&self) -> Result<()> {
        use ProjectorKind::*;
        for x in self.probes() {
            let px = self.apply(&x)?;
            let (lhs, rhs, what) = match (&self.kind, self.problem.kind) {
                (DeltaPeriodic, _) => (constant_part(&px)?, px.flatten(), "delta must map into ker L"),
                (DeltaDirichlet, _) => (self.linear_part(&px)?, px.flatten(), "delta must map into ker L"),
                (PiSum, ProblemKind::DirichletBvp) => {
                    // onto, not idempotent: witnessed by the right inverse
                    let red = Reduction::Dirichlet(Theta::default());
                    let v = red.project(&self.problem, &px)?;
                    (red.project(&self.problem, &red.lift(&self.problem, &v)?)?, v, "pi must have a right inverse")
                }
                _ => (self.apply(&px)?.flatten(), px.flatten(), "not idempotent"),
            };
            let gap = lhs.iter().zip(&rhs).fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
            if gap > PROBE_TOL * (1.0 + sup(&rhs)) {
                return Err(Error::NotProjector(format!("{:?}: {what} (gap {gap:e})", self.kind)));
            }
        }
        Ok(())
    }

    /// Projects a linear `C^1` function `ta + b` onto `ker L` via `t x'(0) + x(0)`.
    fn linear_part(&self, x: &Element) -> Result<Vec<f64>> {
        let x = x.as_c1()?;
        Ok(Element::C1(linear_c1(x.grid(), x.slope.first(), x.value.first())?).flatten())
    }

    pub fn apply(&self, x: &Element) -> Result<Element> {
        use ProjectorKind::*;
        let space = self.space();
        if x.space() != space && !matches!(x.space(), Space::Grid { periodic: true, .. }) {
            return Err(Error::SpaceMismatch(format!(
                "projector on {} got {}",
                space.describe(),
                x.space().describe()
            )));
        }
        match (&self.kind, self.problem.kind) {
            (KerLDirichlet | DeltaDirichlet | PiSum, ProblemKind::DirichletBvp) => {
                let x = x.as_c1()?;
                let (x0, x1, s0) = (x.value.first(), x.value.last(), x.slope.first());
                let (a, b): (Vec<f64>, Vec<f64>) = match self.kind {
                    KerLDirichlet => (s0.to_vec(), x0.to_vec()),
                    DeltaDirichlet => (x1.to_vec(), x0.to_vec()),
                    _ => (s0.iter().zip(x1).map(|(s, e)| s + e).collect(), x0.iter().map(|v| 2.0 * v).collect()),
                };
                Ok(Element::C1(linear_c1(x.grid(), &a, &b)?))
            }
            (PiSum, ProblemKind::Nonlocal1d) => {
                let x = x.as_c1()?;
                let c = nonlocal_pi(x);
                Ok(Element::C1(linear_c1(x.grid(), &vec![0.0; c.len()], &c)?))
            }
            (kind, _) => {
                let x = x.as_grid()?;
                let c: Vec<f64> = match kind {
                    EvalAt0 | KerLPeriodic => x.first().to_vec(),
                    EvalAtT | PiSum => x.last().to_vec(),
                    Mean => average(x),
                    DeltaPeriodic => x.last().iter().zip(x.first()).map(|(b, a)| b - a).collect(),
                    CustomLinear { weights } => {
                        if weights.len() != x.grid().nodes_count() {
                            return Err(Error::DimMismatch { expected: x.grid().nodes_count(), got: weights.len() });
                        }
                        let mut c = vec![0.0; x.dim()];
                        for (j, w) in weights.iter().enumerate() {
                            c.iter_mut().zip(x.at(j)).for_each(|(ci, v)| *ci += w * v);
                        }
                        c
                    }
                    _ => unreachable!("C1 kinds handled above"),
                };
                Ok(Element::Grid(GridFunction::constant(*x.grid(), &c)))
            }
        }
    }
}

fn constant_part(x: &Element) -> Result<Vec<f64>> {
    let x = x.as_grid()?;
    Ok(GridFunction::constant(*x.grid(), x.first()).values().to_vec())
}

/// The `C^1` element `t ↦ t a + b`.
fn linear_c1(grid: &Grid, a: &[f64], b: &[f64]) -> Result<C1Function> {
    let value = GridFunction::from_fn(*grid, a.len(), |t, out| {
        for i in 0..out.len() {
            out[i] = t * a[i] + b[i];
        }
    })?;
    C1Function::new(value, GridFunction::constant(*grid, a))
}

fn function_space(problem: &Problem, periodic: bool) -> Space {
    match problem.kind {
        ProblemKind::DirichletBvp | ProblemKind::Nonlocal1d => Space::C1 { grid: problem.grid, dim: problem.dim() },
        _ => Space::Grid { grid: problem.grid, dim: problem.dim(), periodic },
    }
}

/// A pair `(pi, i)` with `pi ∘ i = id` linking a function space to a finite one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reduction {
    /// `pi(x) = x(0) + s (x(T) - x(0))`, `i(c) = c`.
    PeriodicConst(Theta),
    /// `pi(x) = (x'(0) + s_t x(1), (1 + s_c) x(0))`, `i(a, b) = t^2 (s_t a - b/2) + b/2`.
    Dirichlet(Theta),
    /// `pi(x) = x'(0)`, `i(a) = mu(t a)`.
    DirichletSlope,
    /// `pi(x) = x_T` sampled at the history nodes, `i(y)` extends `y(t - T)` backwards by `y(-tau)`.
    Delay,
    /// `pi(u) = u(0) + u'(L) - u'(0)`, `i(c) = c`.
    Nonlocal,
}

impl Reduction {
    pub fn finite_dim(&self, problem: &Problem) -> usize {
        match self {
            Reduction::Dirichlet(_) => 2 * problem.dim(),
            Reduction::Delay => problem.history_nodes * problem.dim(),
            _ => problem.dim(),
        }
    }

    pub fn space(&self, problem: &Problem) -> Space {
        function_space(problem, false)
    }

    fn expect(&self, problem: &Problem) -> Result<()> {
        let kind = match self {
            Reduction::PeriodicConst(_) => ProblemKind::PeriodicOde,
            Reduction::Dirichlet(_) | Reduction::DirichletSlope => ProblemKind::DirichletBvp,
            Reduction::Delay => ProblemKind::PeriodicDde,
            Reduction::Nonlocal => ProblemKind::Nonlocal1d,
        };
        if problem.kind != kind {
            return Err(Error::NotReducible(format!("{self:?} does not apply to {}", problem.kind)));
        }
        Ok(())
    }

    pub fn project(&self, problem: &Problem, x: &Element) -> Result<Vec<f64>> {
        self.expect(problem)?;
        match *self {
            Reduction::PeriodicConst(theta) => Ok(pi_periodic(x.as_grid()?, theta.const_block)),
            Reduction::Dirichlet(theta) => {
                let (a, b) = pi_dirichlet(x.as_c1()?, theta);
                Ok([a, b].concat())
            }
            Reduction::DirichletSlope => Ok(x.as_c1()?.slope.first().to_vec()),
            Reduction::Delay => delay_pi(problem, x.as_grid()?),
            Reduction::Nonlocal => Ok(nonlocal_pi(x.as_c1()?)),
        }
    }

    pub fn lift(&self, problem: &Problem, v: &[f64]) -> Result<Element> {
        self.expect(problem)?;
        if v.len() != self.finite_dim(problem) {
            return Err(Error::DimMismatch { expected: self.finite_dim(problem), got: v.len() });
        }
        let n = problem.dim();
        let grid = problem.grid;
        match *self {
            Reduction::PeriodicConst(_) => Ok(Element::Grid(GridFunction::constant(grid, v))),
            Reduction::Dirichlet(theta) => {
                if theta.const_block != 1.0 {
                    return Err(Error::NotReducible("pi with a reversed constant block is not onto".into()));
                }
                let (a, b) = v.split_at(n);
                let alpha: Vec<f64> = a.iter().zip(b).map(|(a, b)| theta.t_block * a - b / 2.0).collect();
                let value = GridFunction::from_fn(grid, n, |t, out| {
                    for i in 0..n {
                        out[i] = t * t * alpha[i] + b[i] / 2.0;
                    }
                })?;
                let slope = GridFunction::from_fn(grid, n, |t, out| {
                    for i in 0..n {
                        out[i] = 2.0 * t * alpha[i];
                    }
                })?;
                Ok(Element::C1(C1Function::new(value, slope)?))
            }
            Reduction::DirichletSlope => Ok(Element::C1(flows::mu_dirichlet(&problem.field, v, &vec![0.0; n], &grid)?)),
            Reduction::Delay => Ok(Element::Grid(delay_lift(problem, v)?)),
            Reduction::Nonlocal => Ok(Element::C1(linear_c1(&grid, &vec![0.0; n], v)?)),
        }
    }
}

fn pi_periodic(x: &GridFunction, s: f64) -> Vec<f64> {
    x.first().iter().zip(x.last()).map(|(a, b)| a + s * (b - a)).collect()
}

fn pi_dirichlet(x: &C1Function, theta: Theta) -> (Vec<f64>, Vec<f64>) {
    let a = x.slope.first().iter().zip(x.value.last()).map(|(s, e)| s + theta.t_block * e).collect();
    let b = x.value.first().iter().map(|v| (1.0 + theta.const_block) * v).collect();
    (a, b)
}

fn nonlocal_pi(x: &C1Function) -> Vec<f64> {
    let (u0, s0, s1) = (x.value.first(), x.slope.first(), x.slope.last());
    (0..u0.len()).map(|i| u0[i] + s1[i] - s0[i]).collect()
}

/// History nodes of `x_T`, i.e. `x` at `T - tau + k tau / (q - 1)`.
fn delay_pi(problem: &Problem, x: &GridFunction) -> Result<Vec<f64>> {
    let (_, shift, stride) = problem.delay_shift()?;
    let m = problem.grid.intervals();
    let mut y = Vec::with_capacity(problem.history_nodes * x.dim());
    for k in 0..problem.history_nodes {
        y.extend_from_slice(x.at(m - shift + k * stride));
    }
    Ok(y)
}

/// Piecewise-linear history on the fine grid of `[-tau, 0]` through the coarse values `y`.
fn delay_history(problem: &Problem, y: &[f64]) -> Result<GridFunction> {
    let (kernel, shift, stride) = problem.delay_shift()?;
    let n = problem.dim();
    let hgrid = Grid::new(-kernel.tau(), 0.0, shift)?;
    let mut values = vec![0.0; (shift + 1) * n];
    for j in 0..=shift {
        let (k, r) = (j / stride, j % stride);
        for i in 0..n {
            values[j * n + i] = if r == 0 {
                y[k * n + i]
            } else {
                let w = r as f64 / stride as f64;
                (1.0 - w) * y[k * n + i] + w * y[(k + 1) * n + i]
            };
        }
    }
    GridFunction::new(hgrid, n, values)
}

fn delay_lift(problem: &Problem, y: &[f64]) -> Result<GridFunction> {
    let (_, shift, _) = problem.delay_shift()?;
    let n = problem.dim();
    let m = problem.grid.intervals();
    let hist = delay_history(problem, y)?;
    let mut values = vec![0.0; (m + 1) * n];
    for j in 0..=m {
        let src = if j + shift >= m { hist.at(j + shift - m) } else { &y[..n] };
        values[j * n..(j + 1) * n].copy_from_slice(src);
    }
    GridFunction::new(problem.grid, n, values)
}

/// `mu(y)`: the DDE solution with history `y`, restricted to `[0, T]`.
fn delay_mu(problem: &Problem, y: &[f64]) -> Result<GridFunction> {
    let (_, shift, _) = problem.delay_shift()?;
    let hist = delay_history(problem, y)?;
    let full = flows::dde_flow(&problem.field, &hist, problem.grid.end())?;
    let n = problem.dim();
    GridFunction::new(problem.grid, n, full.values()[shift * n..].to_vec())
}

/// Solution of `u'' = f(t, u)` with `u(0) = u(L) = c`, found by Newton on the initial slope.
pub fn nonlocal_mu(problem: &Problem, c: &[f64]) -> Result<C1Function> {
    let n = problem.dim();
    let grid = problem.grid;
    let f = &problem.field;
    let miss = |s: &[f64]| -> Result<Vec<f64>> {
        let end = flows::mu_dirichlet(f, s, c, &grid)?.value.last().to_vec();
        Ok(end.iter().zip(c).map(|(e, ci)| e - ci).collect())
    };
    let mut s = vec![0.0; n];
    for _ in 0..50 {
        let r = miss(&s)?;
        if sup(&r) < 1e-12 * (1.0 + sup(c)) {
            return flows::mu_dirichlet(f, &s, c, &grid);
        }
        let mut jac = nalgebra::DMatrix::zeros(n, n);
        for j in 0..n {
            let step = 1e-6 * (1.0 + s[j].abs());
            let mut sp = s.clone();
            sp[j] += step;
            let rp = miss(&sp)?;
            for i in 0..n {
                jac[(i, j)] = (rp[i] - r[i]) / step;
            }
        }
        let delta = jac
            .lu()
            .solve(&nalgebra::DVector::from_column_slice(&r))
            .ok_or_else(|| Error::Solver("singular shooting Jacobian for the nonlocal problem".into()))?;
        s.iter_mut().zip(delta.iter()).for_each(|(si, d)| *si -= d);
    }
    let r = miss(&s)?;
    if sup(&r) < 1e-8 * (1.0 + sup(c)) {
        return flows::mu_dirichlet(f, &s, c, &grid);
    }
    Err(Error::Solver(format!("nonlocal shooting did not converge (miss {:e})", sup(&r))))
}

/// Operator parameters. `eta` is required by `Keta` only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct OperatorParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<ProjectorKind>,
    #[serde(default)]
    pub theta: Theta,
}

impl OperatorParams {
    pub fn eta(eta: f64) -> Self {
        OperatorParams { eta: Some(eta), ..Default::default() }
    }

    pub fn gamma(kind: ProjectorKind) -> Self {
        OperatorParams { gamma: Some(kind), ..Default::default() }
    }

    pub fn theta(theta: Theta) -> Self {
        OperatorParams { theta, ..Default::default() }
    }
}

#[derive(Debug, Clone)]
enum Inner {
    Named { gamma: Option<Projector> },
    Homotopy { a: Box<OperatorHandle>, b: Box<OperatorHandle>, lambda: f64 },
    Conjugate { finite: Box<OperatorHandle>, reduction: Reduction },
    PeriodicConjugate { k5: Box<OperatorHandle> },
}

/// A named, parameterized fixed-point operator bound to a problem.
#[derive(Debug, Clone)]
pub struct OperatorHandle {
    name: OperatorName,
    params: OperatorParams,
    space: Space,
    problem: Arc<Problem>,
    inner: Inner,
}

impl OperatorHandle {
    pub fn name(&self) -> OperatorName {
        self.name
    }

    pub fn params(&self) -> &OperatorParams {
        &self.params
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn problem(&self) -> &Arc<Problem> {
        &self.problem
    }

    /// The reduction when the handle was built as `i ∘ F ∘ pi`.
    pub fn conjugate_parts(&self) -> Option<(&OperatorHandle, Reduction)> {
        match &self.inner {
            Inner::Conjugate { finite, reduction } => Some((finite, *reduction)),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        let base = match &self.inner {
            Inner::Named { .. } => self.name.to_string(),
            Inner::Homotopy { a, b, lambda } => format!("{lambda}*{} + {}*{}", a.label(), 1.0 - lambda, b.label()),
            Inner::Conjugate { finite, .. } => format!("i∘{}∘pi", finite.label()),
            Inner::PeriodicConjugate { .. } => "restrict∘K5∘extend".into(),
        };
        match (self.params.eta, self.params.theta == Theta::default()) {
            (Some(eta), _) => format!("{base}(eta={eta})"),
            (None, false) => format!("{base}(theta={},{})", self.params.theta.t_block, self.params.theta.const_block),
            _ => base,
        }
    }

    pub fn apply(&self, x: &Element) -> Result<Element> {
        if x.space() != self.space {
            return Err(Error::SpaceMismatch(format!(
                "{} acts on {}, got {}",
                self.label(),
                self.space.describe(),
                x.space().describe()
            )));
        }
        match &self.inner {
            Inner::Named { gamma } => apply_named(self, gamma.as_ref(), x),
            Inner::Homotopy { a, b, lambda } => {
                let (ya, yb) = (a.apply(x)?.flatten(), b.apply(x)?.flatten());
                let mix: Vec<f64> = ya.iter().zip(&yb).map(|(p, q)| lambda * p + (1.0 - lambda) * q).collect();
                self.space.unflatten(&mix)
            }
            Inner::Conjugate { finite, reduction } => {
                let v = reduction.project(&self.problem, x)?;
                let fv = finite.apply(&Element::Vector(v))?;
                reduction.lift(&self.problem, fv.as_vector()?)
            }
            Inner::PeriodicConjugate { k5 } => {
                let x = x.as_grid()?;
                let t_end = x.grid().end();
                let gap: Vec<f64> = x.last().iter().zip(x.first()).map(|(b, a)| b - a).collect();
                let closed = x.sub(&GridFunction::from_fn(*x.grid(), x.dim(), |t, out| {
                    for i in 0..out.len() {
                        out[i] = t / t_end * gap[i];
                    }
                })?)?;
                let y = k5.apply(&Element::Grid(closed.into_periodic()?))?;
                Ok(Element::Grid(y.as_grid()?.clone().without_periodic()))
            }
        }
    }

    pub fn apply_flat(&self, v: &[f64]) -> Result<Vec<f64>> {
        Ok(self.apply(&self.space.unflatten(v)?)?.flatten())
    }

    /// `x - K(x)` in flat coordinates.
    pub fn defect_flat(&self, v: &[f64]) -> Result<Vec<f64>> {
        Ok(v.iter().zip(self.apply_flat(v)?).map(|(a, b)| a - b).collect())
    }
}

/// Sup norm of `x - K(x)`.
pub fn residual(h: &OperatorHandle, x: &Element) -> Result<f64> {
    Ok(sup(&h.defect_flat(&x.flatten())?))
}

/// Builds a catalog operator for the given problem.
pub fn build(name: OperatorName, problem: Arc<Problem>, params: OperatorParams) -> Result<OperatorHandle> {
    use OperatorName::*;
    params.theta.validate()?;
    let n = problem.dim();
    let incompatible = || Error::IncompatibleProblem { operator: name.to_string(), kind: problem.kind.to_string() };
    let grid = |periodic| Space::Grid { grid: problem.grid, dim: n, periodic };
    let c1 = Space::C1 { grid: problem.grid, dim: n };
    let space = match (problem.kind, name.canonical(problem.kind)) {
        (ProblemKind::PeriodicOde, K0 | K | K1 | Kgamma | K3 | K4 | Khat3) => grid(false),
        (ProblemKind::PeriodicOde, K5 | Keta | Khat5) => grid(true),
        (ProblemKind::PeriodicOde, K2 | KhatP) => Space::Vector { dim: n },
        (ProblemKind::DirichletBvp, K0 | Kdir | Kdir1 | Ktilde) => c1,
        (ProblemKind::DirichletBvp, Kdir2) => Space::Vector { dim: 2 * n },
        (ProblemKind::DirichletBvp, Kg) => Space::Vector { dim: n },
        (ProblemKind::PeriodicDde, Kdelay | Kdelay1 | K6 | K7) => grid(false),
        (ProblemKind::PeriodicDde, K8) => grid(true),
        (ProblemKind::PeriodicDde, Kdelay2) => Space::Vector { dim: problem.history_nodes * n },
        (ProblemKind::Nonlocal1d, K | K1) => c1,
        (ProblemKind::Nonlocal1d, K2) => Space::Vector { dim: n },
        _ => return Err(incompatible()),
    };
    if name == Keta {
        match params.eta {
            None => return Err(Error::MissingParam { operator: name.to_string(), param: "eta".into() }),
            Some(eta) if eta == 0.0 || !eta.is_finite() => {
                return Err(Error::SingularEta { eta, period: problem.grid.len() })
            }
            _ => {}
        }
    }
    let gamma = if name == Kgamma {
        Some(Projector::new(params.gamma.clone().unwrap_or(ProjectorKind::Mean), problem.clone())?)
    } else {
        None
    };
    Ok(OperatorHandle { name, params, space, problem, inner: Inner::Named { gamma } })
}

/// Finite-dimensional operators evaluated through the flows.
pub fn build_finite(name: OperatorName, problem: Arc<Problem>) -> Result<OperatorHandle> {
    let h = build(name, problem, OperatorParams::default())?;
    if !matches!(h.space, Space::Vector { .. }) {
        return Err(Error::SpaceMismatch(format!("{name} does not act on a finite space")));
    }
    Ok(h)
}

/// Same as [`build_finite`] with explicit parameters (for twisted boundary maps).
pub fn build_finite_with(name: OperatorName, problem: Arc<Problem>, params: OperatorParams) -> Result<OperatorHandle> {
    let h = build(name, problem, params)?;
    if !matches!(h.space, Space::Vector { .. }) {
        return Err(Error::SpaceMismatch(format!("{name} does not act on a finite space")));
    }
    Ok(h)
}

/// `lambda * a + (1 - lambda) * b`.
pub fn linear_homotopy(a: &OperatorHandle, b: &OperatorHandle, lambda: f64) -> Result<OperatorHandle> {
    if a.space != b.space {
        return Err(Error::SpaceMismatch(format!("{} and {} act on different spaces", a.label(), b.label())));
    }
    if !Arc::ptr_eq(&a.problem, &b.problem) && a.problem.kind != b.problem.kind {
        return Err(Error::SpaceMismatch("homotopy between operators of different problems".into()));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config { path: "lambda".into(), message: format!("must lie in [0, 1], got {lambda}") });
    }
    Ok(OperatorHandle {
        name: a.name,
        params: a.params.clone(),
        space: a.space,
        problem: a.problem.clone(),
        inner: Inner::Homotopy { a: Box::new(a.clone()), b: Box::new(b.clone()), lambda },
    })
}

/// `i ∘ F ∘ pi` on the function space of the reduction. Checks `pi ∘ i = id` on a basis.
pub fn conjugate(finite: &OperatorHandle, reduction: Reduction) -> Result<OperatorHandle> {
    let problem = finite.problem.clone();
    let k = reduction.finite_dim(&problem);
    if finite.space != (Space::Vector { dim: k }) {
        return Err(Error::NotReducible(format!("{} does not act on R^{k}", finite.label())));
    }
    verify_right_inverse(&problem, reduction)?;
    Ok(OperatorHandle {
        name: finite.name,
        params: finite.params.clone(),
        space: reduction.space(&problem),
        problem,
        inner: Inner::Conjugate { finite: Box::new(finite.clone()), reduction },
    })
}

/// Checks `pi(i(e_j)) = e_j` for the standard basis and a scaled probe.
pub fn verify_right_inverse(problem: &Problem, reduction: Reduction) -> Result<()> {
    let k = reduction.finite_dim(problem);
    for j in 0..=k {
        let v: Vec<f64> = (0..k).map(|i| if j == k { 0.3 * (i as f64 + 1.0) } else { (i == j) as u8 as f64 }).collect();
        let back = reduction.project(problem, &reduction.lift(problem, &v)?)?;
        let gap = back.iter().zip(&v).fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        let tol = match reduction {
            Reduction::DirichletSlope | Reduction::Nonlocal => 1e-10,
            _ => PROBE_TOL,
        };
        if gap > tol {
            return Err(Error::NotReducible(format!("pi∘i differs from the identity by {gap:e}")));
        }
    }
    Ok(())
}

/// `restrict ∘ K5 ∘ extend ∘ p` where `p(x) = x - (t/T)(x(T) - x(0))` closes `x` up;
/// agrees with `K3` on `{x(0) = x(T)}`.
pub fn periodic_conjugate_k5(problem: Arc<Problem>) -> Result<OperatorHandle> {
    let k5 = build(OperatorName::K5, problem.clone(), OperatorParams::default())?;
    Ok(OperatorHandle {
        name: OperatorName::K5,
        params: OperatorParams::default(),
        space: Space::Grid { grid: problem.grid, dim: problem.dim(), periodic: false },
        problem,
        inner: Inner::PeriodicConjugate { k5: Box::new(k5) },
    })
}

/// `pi` and `i` maps exposed as free functions.
pub fn pi_map(problem: &Problem, reduction: Reduction, x: &Element) -> Result<Vec<f64>> {
    reduction.project(problem, x)
}

pub fn i_map(problem: &Problem, reduction: Reduction, v: &[f64]) -> Result<Element> {
    reduction.lift(problem, v)
}

/// `x̄ + s T mean(N) + V(N - c N̄) - mean(V(N - c N̄))` with `c = 1` when centered.
fn averaged(x: &GridFunction, nx: &GridFunction, sign: f64, centered: bool) -> Result<GridFunction> {
    let period = x.grid().len();
    let xbar = average(x);
    let nbar = average(nx);
    let shifted = if centered { nx.add_constant(&nbar.iter().map(|v| -v).collect::<Vec<_>>()) } else { nx.clone() };
    let v = cumulative_integral(&shifted);
    let vbar = average(&v);
    let c: Vec<f64> = (0..x.dim()).map(|i| xbar[i] + sign * period * nbar[i] - vbar[i]).collect();
    Ok(v.add_constant(&c))
}

fn apply_named(h: &OperatorHandle, gamma: Option<&Projector>, x: &Element) -> Result<Element> {
    use OperatorName::*;
    let p = &*h.problem;
    let f = &p.field;
    let grid = p.grid;
    let theta = h.params.theta;
    match (p.kind, h.name.canonical(p.kind)) {
        (ProblemKind::PeriodicOde, name) => match name {
            K0 | K => {
                let x = x.as_grid()?;
                let c = if name == K0 { x.first().to_vec() } else { pi_periodic(x, theta.const_block) };
                Ok(Element::Grid(cumulative_integral(&nemytskii(f, x)?).add_constant(&c)))
            }
            K1 => {
                let c = pi_periodic(x.as_grid()?, theta.const_block);
                Ok(Element::Grid(flows::mu_periodic(f, &c, &grid)?))
            }
            K2 => {
                let x0 = x.as_vector()?;
                let end = flows::poincare(f, x0, &grid)?;
                let s = theta.const_block;
                Ok(Element::Vector(x0.iter().zip(&end).map(|(a, b)| a + s * (b - a)).collect()))
            }
            KhatP => Ok(Element::Vector(flows::inverse_poincare(f, x.as_vector()?, &grid)?)),
            Kgamma => {
                let gamma = gamma.expect("Kgamma is built with a projector");
                let vn = cumulative_integral(&nemytskii(f, x.as_grid()?)?);
                let gx = gamma.apply(x)?;
                let gvn = gamma.apply(&Element::Grid(vn.clone()))?;
                let pvn = pi_periodic(&vn, theta.const_block);
                let c: Vec<f64> = pvn.iter().zip(gvn.as_grid()?.first()).map(|(a, b)| a - b).collect();
                Ok(Element::Grid(vn.add_constant(&c).axpy(1.0, gx.as_grid()?)?))
            }
            K3 | K4 | Khat3 => {
                let x = x.as_grid()?;
                let sign = if name == Khat3 { -1.0 } else { 1.0 };
                Ok(Element::Grid(averaged(x, &nemytskii(f, x)?, sign, name != K4)?))
            }
            K5 | Khat5 => {
                let x = x.as_grid()?;
                let sign = if name == Khat5 { -1.0 } else { 1.0 };
                Ok(Element::Grid(averaged(x, &nemytskii(f, x)?, sign, true)?.into_periodic()?))
            }
            Keta => {
                let eta = h.params.eta.expect("validated at build");
                Ok(Element::Grid(flows::eta_periodic_solve(f, eta, x.as_grid()?)?))
            }
            _ => unreachable!("rejected at build"),
        },
        (ProblemKind::DirichletBvp, name) => match name {
            K0 | Kdir => {
                let x = x.as_c1()?;
                let (a, b) = if name == K0 {
                    (x.slope.first().to_vec(), x.value.first().to_vec())
                } else {
                    pi_dirichlet(x, theta)
                };
                let nx = nemytskii(f, &x.value)?;
                let lin = linear_c1(&grid, &a, &b)?;
                Ok(Element::C1(C1Function::new(
                    lin.value.axpy(1.0, &double_cumulative_integral(&nx))?,
                    lin.slope.axpy(1.0, &cumulative_integral(&nx))?,
                )?))
            }
            Kdir1 => {
                let (a, b) = pi_dirichlet(x.as_c1()?, theta);
                Ok(Element::C1(flows::mu_dirichlet(f, &a, &b, &grid)?))
            }
            Kdir2 => {
                let v = x.as_vector()?;
                let (a, b) = v.split_at(p.dim());
                let (pa, pb) = pi_dirichlet(&flows::mu_dirichlet(f, a, b, &grid)?, theta);
                Ok(Element::Vector([pa, pb].concat()))
            }
            Ktilde => {
                let a = x.as_c1()?.slope.first().to_vec();
                let g = g_map(p, &a)?;
                Ok(Element::C1(flows::mu_dirichlet(f, &g, &vec![0.0; a.len()], &grid)?))
            }
            Kg => Ok(Element::Vector(g_map(p, x.as_vector()?)?)),
            _ => unreachable!("rejected at build"),
        },
        (ProblemKind::PeriodicDde, name) => {
            let kernel = p.kernel.expect("delay problems carry a kernel");
            match name {
                Kdelay => {
                    let x = x.as_grid()?;
                    let vn = cumulative_integral(&nemytskii_delay(f, x, &kernel)?);
                    Ok(Element::Grid(vn.add_constant(x.last())))
                }
                Kdelay1 => Ok(Element::Grid(delay_mu(p, &delay_pi(p, x.as_grid()?)?)?)),
                Kdelay2 => {
                    let y = x.as_vector()?;
                    Ok(Element::Vector(delay_pi(p, &delay_mu(p, y)?)?))
                }
                K6 | K7 => {
                    let x = x.as_grid()?;
                    Ok(Element::Grid(averaged(x, &nemytskii_delay(f, x, &kernel)?, 1.0, name == K7)?))
                }
                K8 => {
                    let x = x.as_grid()?;
                    Ok(Element::Grid(averaged(x, &nemytskii_delay(f, x, &kernel)?, 1.0, true)?.into_periodic()?))
                }
                _ => unreachable!("rejected at build"),
            }
        }
        (ProblemKind::Nonlocal1d, name) => match name {
            K => {
                let x = x.as_c1()?;
                let c = nonlocal_pi(x);
                let nx = nemytskii(f, &x.value)?;
                let w = double_cumulative_integral(&nx);
                let len = grid.len();
                let wl: Vec<f64> = w.last().to_vec();
                let value = w.add_constant(&c).axpy(
                    -1.0,
                    &GridFunction::from_fn(grid, c.len(), |t, out| {
                        for i in 0..out.len() {
                            out[i] = t / len * wl[i];
                        }
                    })?,
                )?;
                let slope = cumulative_integral(&nx).add_constant(&wl.iter().map(|v| -v / len).collect::<Vec<_>>());
                Ok(Element::C1(C1Function::new(value, slope)?))
            }
            K1 => Ok(Element::C1(nonlocal_mu(p, &nonlocal_pi(x.as_c1()?))?)),
            K2 => {
                let c = x.as_vector()?;
                let u = nonlocal_mu(p, c)?;
                Ok(Element::Vector(nonlocal_pi(&u)))
            }
            _ => unreachable!("rejected at build"),
        },
    }
}

/// `g(ta) = t (a - S(a))`, identified with `a ↦ a - S(a)`.
fn g_map(problem: &Problem, a: &[f64]) -> Result<Vec<f64>> {
    let s = flows::shooting(&problem.field, a, &problem.grid)?;
    Ok(a.iter().zip(&s).map(|(a, s)| a - s).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Term, TermTable, TimeFactor};
    use std::f64::consts::PI;

    fn periodic_problem(comps: Vec<Vec<Term>>, m: usize) -> Arc<Problem> {
        let f = VectorField::from_terms(RhsKind::FirstOrder, 1.0, 1.0, TermTable { components: comps }).unwrap();
        Arc::new(Problem::periodic(f, m).unwrap())
    }

    fn cos2pi(c: f64) -> Term {
        Term::forcing(c, TimeFactor::Cos { omega: 2.0 * PI, phase: 0.0 })
    }

    fn linear_scalar() -> Arc<Problem> {
        periodic_problem(vec![vec![Term::state(-1.0, 0, 1), cos2pi(1.0)]], 256)
    }

    fn zero_field() -> Arc<Problem> {
        periodic_problem(vec![vec![]], 64)
    }

    fn closed_form(t: f64) -> f64 {
        ((2.0 * PI * t).cos() + 2.0 * PI * (2.0 * PI * t).sin()) / (1.0 + 4.0 * PI * PI)
    }

    fn solution(p: &Problem) -> Element {
        Element::Grid(GridFunction::from_fn(p.grid, 1, |t, o| o[0] = closed_form(t)).unwrap())
    }

    fn periodic(e: Element) -> Element {
        Element::Grid(e.as_grid().unwrap().clone().into_periodic().unwrap())
    }

    #[test]
    fn k2_is_the_poincare_map() {
        let p = linear_scalar();
        let k2 = build_finite(OperatorName::K2, p.clone()).unwrap();
        let out = k2.apply(&Element::Vector(vec![0.0])).unwrap();
        assert_eq!(out.as_vector().unwrap(), flows::poincare(&p.field, &[0.0], &p.grid).unwrap());
        let id = build_finite(OperatorName::K2, zero_field()).unwrap();
        assert_eq!(id.apply(&Element::Vector(vec![0.4])).unwrap().as_vector().unwrap(), [0.4]);
    }

    #[test]
    fn k_with_zero_field_returns_endpoint_constant() {
        let p = zero_field();
        let k = build(OperatorName::K, p.clone(), OperatorParams::default()).unwrap();
        let x = Element::Grid(GridFunction::from_fn(p.grid, 1, |t, o| o[0] = t * t - 0.2).unwrap());
        let y = k.apply(&x).unwrap();
        assert!(y.as_grid().unwrap().values().iter().all(|&v| v == 0.8));
        let c = Element::Grid(GridFunction::constant(p.grid, &[0.3]));
        assert_eq!(residual(&k, &c).unwrap(), 0.0);
    }

    #[test]
    fn keta_fixes_the_periodic_solution() {
        let p = linear_scalar();
        let x = periodic(solution(&p));
        for eta in [1.0, -1.0] {
            let k = build(OperatorName::Keta, p.clone(), OperatorParams::eta(eta)).unwrap();
            assert!(residual(&k, &x).unwrap() < 5e-5);
        }
        assert!(matches!(build(OperatorName::Keta, p, OperatorParams::default()), Err(Error::MissingParam { .. })));
    }

    #[test]
    fn periodic_operators_share_the_solution() {
        let p = linear_scalar();
        let x = solution(&p);
        for name in [OperatorName::K, OperatorName::K1, OperatorName::K3, OperatorName::K4, OperatorName::Kgamma] {
            let h = build(name, p.clone(), OperatorParams::default()).unwrap();
            assert!(residual(&h, &x).unwrap() <= 5e-5, "{name}");
        }
        let xp = periodic(x.clone());
        let k5 = build(OperatorName::K5, p.clone(), OperatorParams::default()).unwrap();
        assert!(residual(&k5, &xp).unwrap() <= 5e-5);
        let k2 = build_finite(OperatorName::K2, p.clone()).unwrap();
        assert!(residual(&k2, &Element::Vector(vec![closed_form(0.0)])).unwrap() <= 5e-5);
    }

    #[test]
    fn residual_detects_a_bump() {
        let p = linear_scalar();
        let k = build(OperatorName::K, p.clone(), OperatorParams::default()).unwrap();
        let bumped = Element::Grid(
            GridFunction::from_fn(p.grid, 1, |t, o| o[0] = closed_form(t) + 0.1 * (PI * t).sin()).unwrap(),
        );
        assert!(residual(&k, &bumped).unwrap() >= 1e-3);
    }

    #[test]
    fn kgamma_mean_equals_k4() {
        let p = linear_scalar();
        let x = Element::Grid(GridFunction::from_fn(p.grid, 1, |t, o| o[0] = (3.0 * t).sin() + t).unwrap());
        let kg = build(OperatorName::Kgamma, p.clone(), OperatorParams::default()).unwrap();
        let k4 = build(OperatorName::K4, p.clone(), OperatorParams::default()).unwrap();
        let gap = kg
            .apply(&x)
            .unwrap()
            .flatten()
            .iter()
            .zip(k4.apply(&x).unwrap().flatten())
            .fold(0.0f64, |a, (u, v)| a.max((u - v).abs()));
        assert!(gap < 1e-13);
    }

    #[test]
    fn k5_is_the_periodic_extension_of_k3() {
        let p = linear_scalar();
        let x = Element::Grid(
            GridFunction::from_fn(p.grid, 1, |t, o| o[0] = (2.0 * PI * t).sin() + 0.3 * (4.0 * PI * t).cos()).unwrap(),
        );
        let k3 = build(OperatorName::K3, p.clone(), OperatorParams::default()).unwrap().apply(&x).unwrap();
        let k5 = build(OperatorName::K5, p.clone(), OperatorParams::default()).unwrap().apply(&periodic(x)).unwrap();
        let (a, b) = (k3.as_grid().unwrap(), k5.as_grid().unwrap());
        for j in 0..p.grid.intervals() {
            assert_eq!(a.at(j), b.at(j));
        }
        assert_eq!(b.first(), b.last());
    }

    #[test]
    fn homotopy_endpoints() {
        let p = linear_scalar();
        let k = build(OperatorName::K, p.clone(), OperatorParams::default()).unwrap();
        let kg = build(OperatorName::Kgamma, p.clone(), OperatorParams::default()).unwrap();
        let x = Element::Grid(GridFunction::from_fn(p.grid, 1, |t, o| o[0] = t.cos()).unwrap());
        let h0 = linear_homotopy(&k, &kg, 0.0).unwrap();
        let h1 = linear_homotopy(&k, &kg, 1.0).unwrap();
        assert_eq!(h0.apply(&x).unwrap(), kg.apply(&x).unwrap());
        assert_eq!(h1.apply(&x).unwrap(), k.apply(&x).unwrap());
        let half = linear_homotopy(&k, &kg, 0.5).unwrap();
        assert!(residual(&half, &solution(&p)).unwrap() < 5e-5);
        let k2 = build_finite(OperatorName::K2, p).unwrap();
        assert!(matches!(linear_homotopy(&k, &k2, 0.5), Err(Error::SpaceMismatch(_))));
    }

    #[test]
    fn projectors_are_idempotent_or_rejected() {
        let p = linear_scalar();
        for kind in [
            ProjectorKind::EvalAt0,
            ProjectorKind::EvalAtT,
            ProjectorKind::Mean,
            ProjectorKind::KerLPeriodic,
            ProjectorKind::DeltaPeriodic,
            ProjectorKind::PiSum,
        ] {
            Projector::new(kind, p.clone()).unwrap();
        }
        let mut w = vec![0.0; 257];
        w[10] = 0.5;
        w[20] = 0.5;
        Projector::new(ProjectorKind::CustomLinear { weights: w.clone() }, p.clone()).unwrap();
        w[20] = 0.7;
        assert!(matches!(
            Projector::new(ProjectorKind::CustomLinear { weights: w }, p.clone()),
            Err(Error::NotProjector(_))
        ));
        assert!(Projector::new(ProjectorKind::KerLDirichlet, p).is_err());
    }

    fn dirichlet(coeff: f64) -> Arc<Problem> {
        let f = VectorField::from_terms(
            RhsKind::SecondOrder,
            1.0,
            coeff.abs(),
            TermTable { components: vec![vec![Term::state(coeff, 0, 1)]] },
        )
        .unwrap();
        Arc::new(Problem::dirichlet(f, 256).unwrap())
    }

    #[test]
    fn dirichlet_right_inverse() {
        let p = dirichlet(1.0);
        for (a, b) in [(0.3, -1.2), (1.0, 0.0), (0.0, 1.0)] {
            let y = i_map(&p, Reduction::Dirichlet(Theta::default()), &[a, b]).unwrap();
            let y1 = y.as_c1().unwrap();
            // t^2 (a - b/2) + b/2
            assert!((y1.value.at(128)[0] - (0.25 * (a - b / 2.0) + b / 2.0)).abs() < 1e-15);
            let back = pi_map(&p, Reduction::Dirichlet(Theta::default()), &y).unwrap();
            assert!((back[0] - a).abs() < 1e-14 && (back[1] - b).abs() < 1e-15);
        }
        for kind in [ProjectorKind::KerLDirichlet, ProjectorKind::DeltaDirichlet, ProjectorKind::PiSum] {
            Projector::new(kind, p.clone()).unwrap();
        }
        verify_right_inverse(&p, Reduction::DirichletSlope).unwrap();
    }

    #[test]
    fn kdir2_with_zero_field() {
        let f =
            VectorField::from_terms(RhsKind::SecondOrder, 1.0, 0.0, TermTable { components: vec![vec![]] }).unwrap();
        let p = Arc::new(Problem::dirichlet(f, 64).unwrap());
        let k = build_finite(OperatorName::Kdir2, p).unwrap();
        let (a, b) = (0.7, -0.4);
        let out = k.apply(&Element::Vector(vec![a, b])).unwrap();
        let v = out.as_vector().unwrap();
        assert!((v[0] - ((a + b) + a)).abs() < 1e-14);
        assert!((v[1] - 2.0 * b).abs() < 1e-15);
    }

    #[test]
    fn khat_p_inverts_the_linear_flow() {
        let p = periodic_problem(vec![vec![Term::state(-1.0, 0, 1)]], 64);
        let k = build_finite(OperatorName::KhatP, p).unwrap();
        let v = k.apply(&Element::Vector(vec![0.5])).unwrap();
        assert!((v.as_vector().unwrap()[0] - 0.5 * std::f64::consts::E).abs() < 1e-6);
    }

    #[test]
    fn dirichlet_operators_fix_the_trivial_solution() {
        let p = dirichlet(1.0);
        let zero = Space::C1 { grid: p.grid, dim: 1 }.zero();
        for name in [OperatorName::Kdir, OperatorName::Kdir1, OperatorName::Ktilde] {
            let h = build(name, p.clone(), OperatorParams::default()).unwrap();
            assert!(residual(&h, &zero).unwrap() < 1e-14, "{name}");
        }
        let bumped = i_map(&p, Reduction::Dirichlet(Theta::default()), &[0.5, 0.0]).unwrap();
        let kdir = build(OperatorName::Kdir, p, OperatorParams::default()).unwrap();
        assert!(residual(&kdir, &bumped).unwrap() > 1e-2);
    }

    fn delay_problem() -> Arc<Problem> {
        let f = VectorField::from_terms(
            RhsKind::Delay,
            1.0,
            1.5,
            TermTable {
                components: vec![vec![
                    Term::state(-1.0, 0, 1),
                    Term::delayed(0.5, 0, 1),
                    Term::forcing(1.0, TimeFactor::Sin { omega: 2.0 * PI, phase: 0.0 }),
                ]],
            },
        )
        .unwrap();
        Arc::new(Problem::delay(f, 0.5, 112, 8).unwrap())
    }

    #[test]
    fn delay_right_inverse_is_exact() {
        let p = delay_problem();
        let y: Vec<f64> = (0..8).map(|k| (k as f64 * 0.7).sin()).collect();
        let x = i_map(&p, Reduction::Delay, &y).unwrap();
        assert_eq!(pi_map(&p, Reduction::Delay, &x).unwrap(), y);
        // constant y(-tau) before T - tau
        assert!(x.as_grid().unwrap().values()[..56].iter().all(|&v| v == y[0]));
    }

    #[test]
    fn delay_rejects_misaligned_history() {
        let p = delay_problem();
        assert!(Problem::delay(p.field.clone(), 0.5, 112, 6).is_err());
        assert!(Problem::delay(p.field.clone(), 0.3, 112, 8).is_err());
    }

    #[test]
    fn incompatible_operators_are_rejected() {
        assert!(matches!(
            build(OperatorName::Kdir, linear_scalar(), OperatorParams::default()),
            Err(Error::IncompatibleProblem { .. })
        ));
        assert!(matches!(
            build(OperatorName::K3, dirichlet(1.0), OperatorParams::default()),
            Err(Error::IncompatibleProblem { .. })
        ));
    }

    #[test]
    fn nonlocal_shooting_hits_the_boundary_value() {
        let f = VectorField::from_terms(
            RhsKind::SecondOrder,
            2.0 * PI,
            1.0,
            TermTable {
                components: vec![vec![
                    Term::state(1.0, 0, 1),
                    Term::forcing(1.0, TimeFactor::Cos { omega: 1.0, phase: 0.0 }),
                ]],
            },
        )
        .unwrap();
        let p = Problem::nonlocal(f, 256).unwrap();
        let u = nonlocal_mu(&p, &[0.3]).unwrap();
        assert!((u.value.first()[0] - 0.3).abs() < 1e-14);
        assert!((u.value.last()[0] - 0.3).abs() < 1e-9);
    }

    #[test]
    fn operator_names_parse() {
        for name in OperatorName::ALL {
            assert_eq!(name.to_string().parse::<OperatorName>().unwrap(), name);
        }
        assert!("K9".parse::<OperatorName>().is_err());
    }
}
