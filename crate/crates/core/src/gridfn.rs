//! Uniform-grid functions standing in for `C[0,T]`, `C_T`, `C^1[0,1]` and
//! `C[-tau, T]`, together with the trapezoid integration operators, averages
//! and superposition (Nemytskii) operators built on them.
//!
//! All quadrature is composite trapezoid so that plain and cumulative
//! integrals agree node for node: `T * average(x) == cumulative_integral(x)(T)`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::field::VectorField;

/// Uniform partition of `[a, b]` into `m` subintervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    a: f64,
    b: f64,
    m: usize,
}

impl Grid {
    pub fn new(a: f64, b: f64, m: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(Error::InvalidGrid(format!("need b > a, got [{a}, {b}]")));
        }
        if m < 2 {
            return Err(Error::InvalidGrid(format!("need m >= 2, got {m}")));
        }
        Ok(Grid { a, b, m })
    }

    pub fn start(&self) -> f64 {
        self.a
    }

    pub fn end(&self) -> f64 {
        self.b
    }

    pub fn len(&self) -> f64 {
        self.b - self.a
    }

    /// Number of subintervals.
    pub fn intervals(&self) -> usize {
        self.m
    }

    pub fn nodes_count(&self) -> usize {
        self.m + 1
    }

    pub fn step(&self) -> f64 {
        (self.b - self.a) / self.m as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        if j == self.m {
            self.b
        } else {
            self.a + j as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.m).map(move |j| self.node(j))
    }

    /// Number of whole steps in `len`, or an error when `len` is not a multiple of `h`.
    pub fn steps_in(&self, len: f64) -> Option<usize> {
        let h = self.step();
        let k = (len / h).round();
        if k >= 0.0 && (k * h - len).abs() <= 1e-9 * len.abs().max(1.0) {
            Some(k as usize)
        } else {
            None
        }
    }
}

/// Vector-valued samples at the nodes of a [`Grid`], stored node-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    grid: Grid,
    dim: usize,
    values: Vec<f64>,
    periodic: bool,
}

const PERIODIC_TOL: f64 = 1e-10;

impl GridFunction {
    /// `values` holds `(m + 1) * dim` entries, node-major.
    pub fn new(grid: Grid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DimMismatch { expected: 1, got: 0 });
        }
        let expected = grid.nodes_count() * dim;
        if values.len() != expected {
            return Err(Error::DimMismatch { expected, got: values.len() });
        }
        ensure_finite(&values, || "grid function values".into())?;
        Ok(GridFunction { grid, dim, values, periodic: false })
    }

    pub fn from_fn(grid: Grid, dim: usize, mut f: impl FnMut(f64, &mut [f64])) -> Result<Self> {
        let mut values = vec![0.0; grid.nodes_count() * dim];
        for (j, chunk) in values.chunks_mut(dim).enumerate() {
            f(grid.node(j), chunk);
        }
        Self::new(grid, dim, values)
    }

    pub fn constant(grid: Grid, c: &[f64]) -> Self {
        let values = c.iter().copied().cycle().take(grid.nodes_count() * c.len()).collect();
        GridFunction { grid, dim: c.len(), values, periodic: false }
    }

    pub fn zeros(grid: Grid, dim: usize) -> Self {
        GridFunction { grid, dim, values: vec![0.0; grid.nodes_count() * dim], periodic: false }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn at(&self, j: usize) -> &[f64] {
        &self.values[j * self.dim..(j + 1) * self.dim]
    }

    pub fn at_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.values[j * self.dim..(j + 1) * self.dim]
    }

    pub fn first(&self) -> &[f64] {
        self.at(0)
    }

    pub fn last(&self) -> &[f64] {
        self.at(self.grid.m)
    }

    /// Flags the function as an element of `C_T`. Fails unless the endpoint
    /// values agree within 1e-10; the last node is then snapped onto the first.
    pub fn into_periodic(mut self) -> Result<Self> {
        let m = self.grid.m;
        for i in 0..self.dim {
            let (v0, vm) = (self.values[i], self.values[m * self.dim + i]);
            if (v0 - vm).abs() > PERIODIC_TOL * v0.abs().max(1.0) {
                return Err(Error::SpaceMismatch(format!(
                    "periodic flag needs x(a) = x(b); component {i} differs by {:e}",
                    (v0 - vm).abs()
                )));
            }
            self.values[m * self.dim + i] = v0;
        }
        self.periodic = true;
        Ok(self)
    }

    pub fn without_periodic(mut self) -> Self {
        self.periodic = false;
        self
    }

    /// Sup norm over nodes and components.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc: f64, v| acc.max(v.abs()))
    }

    fn same_shape(&self, other: &GridFunction) -> Result<()> {
        if self.grid != other.grid || self.dim != other.dim {
            return Err(Error::SpaceMismatch("grid functions live on different grids".into()));
        }
        Ok(())
    }

    /// `self + s * other`; the periodic flag survives only if both are periodic.
    pub fn axpy(&self, s: f64, other: &GridFunction) -> Result<GridFunction> {
        self.same_shape(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + s * b).collect();
        Ok(GridFunction { values, periodic: self.periodic && other.periodic, ..self.clone() })
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.axpy(-1.0, other)
    }

    pub fn scale(&self, s: f64) -> GridFunction {
        GridFunction { values: self.values.iter().map(|v| s * v).collect(), ..self.clone() }
    }

    pub fn add_constant(&self, c: &[f64]) -> GridFunction {
        let mut out = self.clone();
        for chunk in out.values.chunks_mut(self.dim) {
            chunk.iter_mut().zip(c).for_each(|(v, ci)| *v += ci);
        }
        out
    }

    /// Pointwise `t ↦ w(t) * self(t)` with a scalar weight.
    pub fn weighted(&self, w: impl Fn(f64) -> f64) -> GridFunction {
        let mut out = self.clone();
        for (j, chunk) in out.values.chunks_mut(self.dim).enumerate() {
            let wj = w(self.grid.node(j));
            chunk.iter_mut().for_each(|v| *v *= wj);
        }
        out.periodic = false;
        out
    }

    /// Sup-norm distance.
    pub fn distance(&self, other: &GridFunction) -> Result<f64> {
        Ok(self.sub(other)?.sup_norm())
    }
}

/// A `C^1` element sampled as values and first derivatives on the same grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C1Function {
    pub value: GridFunction,
    pub slope: GridFunction,
}

impl C1Function {
    pub fn new(value: GridFunction, slope: GridFunction) -> Result<Self> {
        value.same_shape(&slope)?;
        Ok(C1Function { value, slope })
    }

    /// `C^1` norm: the larger of the sup norms of the function and its derivative.
    pub fn norm(&self) -> f64 {
        self.value.sup_norm().max(self.slope.sup_norm())
    }

    pub fn grid(&self) -> &Grid {
        self.value.grid()
    }

    pub fn dim(&self) -> usize {
        self.value.dim()
    }

    pub fn axpy(&self, s: f64, other: &C1Function) -> Result<C1Function> {
        Ok(C1Function { value: self.value.axpy(s, &other.value)?, slope: self.slope.axpy(s, &other.slope)? })
    }

    pub fn scale(&self, s: f64) -> C1Function {
        C1Function { value: self.value.scale(s), slope: self.slope.scale(s) }
    }
}

/// The delay `tau` together with the period `T >= tau` it wraps around.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayKernel {
    tau: f64,
    period: f64,
}

impl DelayKernel {
    pub fn new(tau: f64, period: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidDelay(format!("tau must be > 0, got {tau}")));
        }
        if !(period >= tau) {
            return Err(Error::InvalidDelay(format!("tau={tau} exceeds period T={period}")));
        }
        Ok(DelayKernel { tau, period })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// Number of grid steps in one delay; errors when tau is not a multiple of h.
    pub fn shift_on(&self, grid: &Grid) -> Result<usize> {
        grid.steps_in(self.tau).filter(|&s| s >= 1).ok_or(Error::DelayMisaligned { tau: self.tau, h: grid.step() })
    }

    /// Node index of `r(t_j)`: `t_j - tau + T` for `t_j < tau`, else `t_j - tau`.
    pub fn wrapped_index(&self, j: usize, shift: usize, m: usize) -> usize {
        if j < shift {
            j + m - shift
        } else {
            j - shift
        }
    }
}

/// `V(x)(t) = ∫_a^t x(s) ds` by the cumulative trapezoid rule; `V(x)(a) = 0` exactly.
pub fn cumulative_integral(x: &GridFunction) -> GridFunction {
    let n = x.dim;
    let h = x.grid.step();
    let mut values = vec![0.0; x.values.len()];
    for j in 1..x.grid.nodes_count() {
        for i in 0..n {
            values[j * n + i] = values[(j - 1) * n + i] + 0.5 * h * (x.values[(j - 1) * n + i] + x.values[j * n + i]);
        }
    }
    GridFunction { grid: x.grid, dim: n, values, periodic: false }
}

/// `V(x)(t) = ∫_a^t ∫_a^r x(s) ds dr`, the cumulative trapezoid applied twice.
pub fn double_cumulative_integral(x: &GridFunction) -> GridFunction {
    cumulative_integral(&cumulative_integral(x))
}

/// Trapezoid integral over the whole grid.
pub fn integral(x: &GridFunction) -> Vec<f64> {
    let n = x.dim;
    let h = x.grid.step();
    let m = x.grid.m;
    (0..n)
        .map(|i| {
            let inner: f64 = (1..m).map(|j| x.values[j * n + i]).sum();
            h * (0.5 * (x.values[i] + x.values[m * n + i]) + inner)
        })
        .collect()
}

/// Mean value `(1/|I|) ∫_I x`.
pub fn average(x: &GridFunction) -> Vec<f64> {
    let len = x.grid.len();
    integral(x).into_iter().map(|v| v / len).collect()
}

/// `N(x)(t_j) = f(t_j, x(t_j))`.
pub fn nemytskii(f: &VectorField, x: &GridFunction) -> Result<GridFunction> {
    if f.dim() != x.dim {
        return Err(Error::DimMismatch { expected: f.dim(), got: x.dim });
    }
    let n = x.dim;
    let mut values = vec![0.0; x.values.len()];
    for (j, out) in values.chunks_mut(n).enumerate() {
        f.eval(x.grid.node(j), x.at(j), out)?;
    }
    Ok(GridFunction { grid: x.grid, dim: n, values, periodic: false })
}

/// `N_r(x)(t_j) = f(t_j, x(t_j), x(r(t_j)))` with the wrapped delay `r` of `kernel`.
pub fn nemytskii_delay(f: &VectorField, x: &GridFunction, kernel: &DelayKernel) -> Result<GridFunction> {
    if f.dim() != x.dim {
        return Err(Error::DimMismatch { expected: f.dim(), got: x.dim });
    }
    if (x.grid.len() - kernel.period).abs() > 1e-12 * kernel.period.max(1.0) {
        return Err(Error::InvalidDelay(format!(
            "grid length {} differs from the kernel period {}",
            x.grid.len(),
            kernel.period
        )));
    }
    let shift = kernel.shift_on(&x.grid)?;
    let n = x.dim;
    let m = x.grid.m;
    let mut values = vec![0.0; x.values.len()];
    for (j, out) in values.chunks_mut(n).enumerate() {
        let r = kernel.wrapped_index(j, shift, m);
        f.eval_delay(x.grid.node(j), x.at(j), x.at(r), out)?;
    }
    Ok(GridFunction { grid: x.grid, dim: n, values, periodic: false })
}
