//! Right-hand sides of the differential equations under study.
//!
//! A [`VectorField`] is either a table of polynomial-times-trigonometric
//! terms (serializable, used by the problem catalog and JSON configs) or an
//! arbitrary closure for programmatic use.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Shape of the equation the right-hand side belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhsKind {
    /// `x'(t) = f(t, x(t))`
    FirstOrder,
    /// `x'(t) = f(t, x(t), x(t - tau))`
    Delay,
    /// `x''(t) = f(t, x(t))`
    SecondOrder,
}

/// Time factor multiplying a monomial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeFactor {
    #[default]
    One,
    Cos {
        omega: f64,
        #[serde(default)]
        phase: f64,
    },
    Sin {
        omega: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl TimeFactor {
    fn eval(&self, t: f64) -> f64 {
        match *self {
            TimeFactor::One => 1.0,
            TimeFactor::Cos { omega, phase } => (omega * t + phase).cos(),
            TimeFactor::Sin { omega, phase } => (omega * t + phase).sin(),
        }
    }
}

/// `coeff * prod_j x_j^{x_pow[j]} * prod_j y_j^{y_pow[j]} * time(t)`.
///
/// Missing exponents are zero, so `x_pow = [1]` in a planar field means `x_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub x_pow: Vec<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub y_pow: Vec<u32>,
    #[serde(default, skip_serializing_if = "is_one")]
    pub time: TimeFactor,
}

fn is_one(t: &TimeFactor) -> bool {
    matches!(t, TimeFactor::One)
}

impl Term {
    pub fn constant(coeff: f64) -> Self {
        Term { coeff, x_pow: vec![], y_pow: vec![], time: TimeFactor::One }
    }

    /// `coeff * x_index^power`.
    pub fn state(coeff: f64, index: usize, power: u32) -> Self {
        let mut x_pow = vec![0; index + 1];
        x_pow[index] = power;
        Term { coeff, x_pow, y_pow: vec![], time: TimeFactor::One }
    }

    /// `coeff * y_index^power` where `y` is the delayed state.
    pub fn delayed(coeff: f64, index: usize, power: u32) -> Self {
        let mut y_pow = vec![0; index + 1];
        y_pow[index] = power;
        Term { coeff, x_pow: vec![], y_pow, time: TimeFactor::One }
    }

    pub fn forcing(coeff: f64, time: TimeFactor) -> Self {
        Term { coeff, x_pow: vec![], y_pow: vec![], time }
    }

    fn eval(&self, t: f64, x: &[f64], y: &[f64]) -> f64 {
        let mut v = self.coeff * self.time.eval(t);
        for (j, &p) in self.x_pow.iter().enumerate() {
            if p > 0 {
                v *= x[j].powi(p as i32);
            }
        }
        for (j, &p) in self.y_pow.iter().enumerate() {
            if p > 0 {
                v *= y[j].powi(p as i32);
            }
        }
        v
    }
}

/// One list of terms per output component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermTable {
    pub components: Vec<Vec<Term>>,
}

impl TermTable {
    pub fn dim(&self) -> usize {
        self.components.len()
    }

    fn max_index(&self) -> (usize, usize) {
        let mut xs = 0;
        let mut ys = 0;
        for term in self.components.iter().flatten() {
            xs = xs.max(term.x_pow.len());
            ys = ys.max(term.y_pow.len());
        }
        (xs, ys)
    }

    pub fn uses_delay(&self) -> bool {
        self.components.iter().flatten().any(|t| t.y_pow.iter().any(|&p| p > 0))
    }
}

type RhsFn = dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync;

/// Closure-backed right-hand side: `(t, x, y_delayed, out)`.
#[derive(Clone)]
pub struct CustomRhs(pub Arc<RhsFn>);

impl fmt::Debug for CustomRhs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomRhs(..)")
    }
}

#[derive(Debug, Clone)]
pub enum Rhs {
    Terms(TermTable),
    Custom(CustomRhs),
}

/// Right-hand side together with its period and declared Lipschitz bound.
#[derive(Debug, Clone)]
pub struct VectorField {
    dim: usize,
    period: f64,
    kind: RhsKind,
    lipschitz: f64,
    rhs: Rhs,
}

impl VectorField {
    pub fn from_terms(kind: RhsKind, period: f64, lipschitz: f64, table: TermTable) -> Result<Self> {
        let dim = table.dim();
        let (xs, ys) = table.max_index();
        if dim == 0 || xs > dim || ys > dim {
            return Err(Error::Config {
                path: "rhs".into(),
                message: format!("term table of dimension {dim} references index beyond the state"),
            });
        }
        if table.uses_delay() && kind != RhsKind::Delay {
            return Err(Error::Config { path: "rhs".into(), message: "delayed terms in a non-delay field".into() });
        }
        Self::validated(dim, period, kind, lipschitz, Rhs::Terms(table))
    }

    pub fn from_fn<F>(kind: RhsKind, dim: usize, period: f64, lipschitz: f64, f: F) -> Result<Self>
    where
        F: Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self::validated(dim, period, kind, lipschitz, Rhs::Custom(CustomRhs(Arc::new(f))))
    }

    fn validated(dim: usize, period: f64, kind: RhsKind, lipschitz: f64, rhs: Rhs) -> Result<Self> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::Config { path: "period".into(), message: format!("must be > 0, got {period}") });
        }
        if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
            return Err(Error::Config {
                path: "lipschitz".into(),
                message: format!("must be finite and >= 0, got {lipschitz}"),
            });
        }
        if dim == 0 {
            return Err(Error::Config { path: "dim".into(), message: "must be positive".into() });
        }
        Ok(VectorField { dim, period, kind, lipschitz, rhs })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn kind(&self) -> RhsKind {
        self.kind
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn rhs(&self) -> &Rhs {
        &self.rhs
    }

    pub fn terms(&self) -> Option<&TermTable> {
        match &self.rhs {
            Rhs::Terms(t) => Some(t),
            Rhs::Custom(_) => None,
        }
    }

    /// Evaluates `f(t, x)` (the delayed argument is taken equal to zero).
    pub fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        let zeros = [0.0; 8];
        if self.dim <= zeros.len() {
            self.eval_delay(t, x, &zeros[..self.dim], out)
        } else {
            self.eval_delay(t, x, &vec![0.0; self.dim], out)
        }
    }

    /// Evaluates `f(t, x, y)`. Non-finite output is an error.
    pub fn eval_delay(&self, t: f64, x: &[f64], y: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.dim || y.len() != self.dim || out.len() != self.dim {
            return Err(Error::DimMismatch { expected: self.dim, got: x.len() });
        }
        match &self.rhs {
            Rhs::Terms(table) => {
                for (o, comp) in out.iter_mut().zip(&table.components) {
                    *o = comp.iter().map(|term| term.eval(t, x, y)).sum();
                }
            }
            Rhs::Custom(CustomRhs(f)) => f(t, x, y, out),
        }
        ensure_finite(out, || format!("vector field at t={t}"))
    }

    /// Returns the field with an additional forcing term `amplitude * cos(2 pi t / T)` in
    /// every component.
    pub fn with_forcing(&self, amplitude: f64) -> Self {
        let omega = 2.0 * std::f64::consts::PI / self.period;
        let rhs = match &self.rhs {
            Rhs::Terms(table) => {
                let mut table = table.clone();
                for comp in &mut table.components {
                    comp.push(Term::forcing(amplitude, TimeFactor::Cos { omega, phase: 0.0 }));
                }
                Rhs::Terms(table)
            }
            Rhs::Custom(CustomRhs(f)) => {
                let f = f.clone();
                Rhs::Custom(CustomRhs(Arc::new(move |t, x, y, out: &mut [f64]| {
                    f(t, x, y, out);
                    let extra = amplitude * (omega * t).cos();
                    out.iter_mut().for_each(|o| *o += extra);
                })))
            }
        };
        VectorField { rhs, ..self.clone() }
    }
}
