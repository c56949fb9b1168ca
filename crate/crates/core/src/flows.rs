//! Fixed-step RK4 initial value integrators.
//!
//! Everything here is deterministic: identical inputs give bitwise identical
//! trajectories, which the degree computations rely on.

use crate::error::{Error, Result};
use crate::field::{RhsKind, VectorField};
use crate::gridfn::{nemytskii, C1Function, Grid, GridFunction};

/// Trajectory of an initial value problem on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    pub trajectory: GridFunction,
    pub endpoint: Vec<f64>,
    pub steps: usize,
}

fn nonfinite_to_integration(step: usize, t: f64) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite { context } => Error::Integration { step, t, reason: context },
        other => other,
    }
}

/// Classical RK4 for `u' = rhs(t, u)` over `steps` steps of signed size `h`.
/// Returns all `steps + 1` states, node-major.
fn rk4<F>(rhs: F, u0: &[f64], t0: f64, h: f64, steps: usize) -> Result<Vec<f64>>
where
    F: Fn(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = u0.len();
    let mut out = Vec::with_capacity((steps + 1) * n);
    out.extend_from_slice(u0);
    let mut u = u0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    for step in 0..steps {
        let t = t0 + step as f64 * h;
        let wrap = nonfinite_to_integration(step, t);
        rhs(t, &u, &mut k1).map_err(&wrap)?;
        for i in 0..n {
            tmp[i] = u[i] + 0.5 * h * k1[i];
        }
        rhs(t + 0.5 * h, &tmp, &mut k2).map_err(&wrap)?;
        for i in 0..n {
            tmp[i] = u[i] + 0.5 * h * k2[i];
        }
        rhs(t + 0.5 * h, &tmp, &mut k3).map_err(&wrap)?;
        for i in 0..n {
            tmp[i] = u[i] + h * k3[i];
        }
        rhs(t + h, &tmp, &mut k4).map_err(&wrap)?;
        for i in 0..n {
            u[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integration { step, t, reason: "state overflowed".into() });
        }
        out.extend_from_slice(&u);
    }
    Ok(out)
}

fn require_kind(f: &VectorField, kind: RhsKind, what: &str) -> Result<()> {
    if f.kind() != kind {
        return Err(Error::IncompatibleProblem { operator: what.into(), kind: format!("{:?}", f.kind()) });
    }
    Ok(())
}

fn require_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimMismatch { expected, got });
    }
    Ok(())
}

/// The flow `t ↦ Φ(t, x0)` of `x' = f(t, x)` sampled on `grid`, starting at `grid.start()`.
pub fn flow(f: &VectorField, x0: &[f64], grid: &Grid) -> Result<FlowResult> {
    require_kind(f, RhsKind::FirstOrder, "flow")?;
    require_dim(f.dim(), x0.len())?;
    let values = rk4(|t, x, out| f.eval(t, x, out), x0, grid.start(), grid.step(), grid.intervals())?;
    let trajectory = GridFunction::new(*grid, f.dim(), values)?;
    Ok(FlowResult { endpoint: trajectory.last().to_vec(), trajectory, steps: grid.intervals() })
}

/// Integrates backward from `x_end` at `grid.end()` down to `grid.start()`.
/// The trajectory is returned in forward node order, so its last node is `x_end`.
pub fn backward_flow(f: &VectorField, x_end: &[f64], grid: &Grid) -> Result<FlowResult> {
    require_kind(f, RhsKind::FirstOrder, "backward_flow")?;
    require_dim(f.dim(), x_end.len())?;
    let n = f.dim();
    let rev = rk4(|t, x, out| f.eval(t, x, out), x_end, grid.end(), -grid.step(), grid.intervals())?;
    let mut values = Vec::with_capacity(rev.len());
    for chunk in rev.chunks(n).rev() {
        values.extend_from_slice(chunk);
    }
    let trajectory = GridFunction::new(*grid, n, values)?;
    Ok(FlowResult { endpoint: trajectory.first().to_vec(), trajectory, steps: grid.intervals() })
}

/// Poincaré map `P(x0) = Φ(T, x0)` on the grid `[0, T]`.
pub fn poincare(f: &VectorField, x0: &[f64], grid: &Grid) -> Result<Vec<f64>> {
    Ok(flow(f, x0, grid)?.endpoint)
}

/// Inverse Poincaré map: the value at time 0 of the solution through `a` at time `T`.
pub fn inverse_poincare(f: &VectorField, a: &[f64], grid: &Grid) -> Result<Vec<f64>> {
    Ok(backward_flow(f, a, grid)?.endpoint)
}

/// `μ(x0) = Φ(·, x0)` as a grid function on `[0, T]`.
pub fn mu_periodic(f: &VectorField, x0: &[f64], grid: &Grid) -> Result<GridFunction> {
    Ok(flow(f, x0, grid)?.trajectory)
}

/// Solution of `x'' = f(t, x)` with `x(0) = b`, `x'(0) = a`, with its derivative track.
pub fn mu_dirichlet(f: &VectorField, a: &[f64], b: &[f64], grid: &Grid) -> Result<C1Function> {
    require_kind(f, RhsKind::SecondOrder, "mu_dirichlet")?;
    let n = f.dim();
    require_dim(n, a.len())?;
    require_dim(n, b.len())?;
    let mut u0 = b.to_vec();
    u0.extend_from_slice(a);
    let rhs = |t: f64, u: &[f64], out: &mut [f64]| {
        out[..n].copy_from_slice(&u[n..]);
        f.eval(t, &u[..n], &mut out[n..])
    };
    let states = rk4(rhs, &u0, grid.start(), grid.step(), grid.intervals())?;
    let mut value = Vec::with_capacity(grid.nodes_count() * n);
    let mut slope = Vec::with_capacity(grid.nodes_count() * n);
    for chunk in states.chunks(2 * n) {
        value.extend_from_slice(&chunk[..n]);
        slope.extend_from_slice(&chunk[n..]);
    }
    C1Function::new(GridFunction::new(*grid, n, value)?, GridFunction::new(*grid, n, slope)?)
}

/// Shooting operator `S(a) = x(1)` for the solution with `x(0) = 0`, `x'(0) = a`.
pub fn shooting(f: &VectorField, a: &[f64], grid: &Grid) -> Result<Vec<f64>> {
    let zero = vec![0.0; a.len()];
    Ok(mu_dirichlet(f, a, &zero, grid)?.value.last().to_vec())
}

/// Second-order finite-difference derivative of sampled history values.
fn history_derivatives(values: &[f64], n: usize, h: f64) -> Vec<f64> {
    let nodes = values.len() / n;
    let mut d = vec![0.0; values.len()];
    let v = |k: usize, i: usize| values[k * n + i];
    for i in 0..n {
        if nodes == 2 {
            let s = (v(1, i) - v(0, i)) / h;
            d[i] = s;
            d[n + i] = s;
            continue;
        }
        d[i] = (-3.0 * v(0, i) + 4.0 * v(1, i) - v(2, i)) / (2.0 * h);
        for k in 1..nodes - 1 {
            d[k * n + i] = (v(k + 1, i) - v(k - 1, i)) / (2.0 * h);
        }
        let l = nodes - 1;
        d[l * n + i] = (3.0 * v(l, i) - 4.0 * v(l - 1, i) + v(l - 2, i)) / (2.0 * h);
    }
    d
}

/// Method of steps for `x'(t) = f(t, x(t), x(t - tau))` with history `x_0 = history`.
///
/// `history` lives on `[-tau, 0]` and its step fixes the integration step; the
/// horizon must be a whole number of steps. Delayed values at RK4 half steps are
/// cubic Hermite interpolants on the stored track; at whole steps they are node values.
/// Returns the solution on `[-tau, horizon]`.
pub fn dde_flow(f: &VectorField, history: &GridFunction, horizon: f64) -> Result<GridFunction> {
    require_kind(f, RhsKind::Delay, "dde_flow")?;
    let n = f.dim();
    require_dim(n, history.dim())?;
    let hgrid = history.grid();
    if hgrid.end().abs() > 1e-12 {
        return Err(Error::InvalidDelay(format!("history must end at 0, got {}", hgrid.end())));
    }
    let h = hgrid.step();
    let s = hgrid.intervals();
    let steps = hgrid.steps_in(horizon).filter(|&k| k >= 1).ok_or(Error::DelayMisaligned { tau: horizon, h })?;
    let total = s + steps + 1;
    let mut track = vec![0.0; total * n];
    track[..(s + 1) * n].copy_from_slice(history.values());
    let hist_d = history_derivatives(history.values(), n, h);
    let mut comp_d = vec![0.0; total * n];

    let mut y = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);

    for step in 0..steps {
        let t = step as f64 * h;
        let cur = s + step;
        let wrap = nonfinite_to_integration(step, t);
        let x: Vec<f64> = track[cur * n..(cur + 1) * n].to_vec();

        // delayed index for time t is `step`; t + h/2 sits half way to `step + 1`
        y.copy_from_slice(&track[step * n..(step + 1) * n]);
        f.eval_delay(t, &x, &y, &mut k1).map_err(&wrap)?;
        comp_d[cur * n..(cur + 1) * n].copy_from_slice(&k1);

        let d = if step < s { &hist_d } else { &comp_d };
        for i in 0..n {
            let (a, b) = (track[step * n + i], track[(step + 1) * n + i]);
            let (da, db) = (d[step * n + i], d[(step + 1) * n + i]);
            y[i] = 0.5 * (a + b) + h * (da - db) / 8.0;
        }
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        f.eval_delay(t + 0.5 * h, &tmp, &y, &mut k2).map_err(&wrap)?;
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        f.eval_delay(t + 0.5 * h, &tmp, &y, &mut k3).map_err(&wrap)?;

        y.copy_from_slice(&track[(step + 1) * n..(step + 2) * n]);
        for i in 0..n {
            tmp[i] = x[i] + h * k3[i];
        }
        f.eval_delay(t + h, &tmp, &y, &mut k4).map_err(&wrap)?;

        for i in 0..n {
            let next = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            if !next.is_finite() {
                return Err(Error::Integration { step, t, reason: "state overflowed".into() });
            }
            track[(cur + 1) * n + i] = next;
        }
    }
    let grid = Grid::new(hgrid.start(), horizon, s + steps)?;
    GridFunction::new(grid, n, track)
}

/// Unique `T`-periodic solution `y` of `y' + eta y = f(t, x(t)) + eta x(t)`
/// by variation of constants.
///
/// The source `g = N(x) + eta x` is taken piecewise linear between nodes and
/// integrated against the exact exponential factor, so constants are
/// reproduced exactly and the error is second order like the trapezoid rule.
pub fn eta_periodic_solve(f: &VectorField, eta: f64, x: &GridFunction) -> Result<GridFunction> {
    require_kind(f, RhsKind::FirstOrder, "eta_periodic_solve")?;
    let grid = *x.grid();
    let period = grid.len();
    let growth = (eta * period).exp() - 1.0;
    if eta == 0.0 || !growth.is_finite() || growth.abs() < 1e-12 {
        return Err(Error::SingularEta { eta, period });
    }
    let n = x.dim();
    let m = grid.intervals();
    let h = grid.step();
    let g = nemytskii(f, x)?.axpy(eta, x)?;
    let z = eta * h;
    let e = (-z).exp();
    // ∫_0^h e^{-eta u} du and ∫_0^h e^{-eta u} (u/h) du
    let a = -(-z).exp_m1() / eta;
    let b = one_minus_exp_times_linear(z) / (eta * z);
    let (w_old, w_new) = (b, a - b);

    // particular solution from y(0) = 0, then fix the periodic initial value
    let mut values = vec![0.0; grid.nodes_count() * n];
    for j in 0..m {
        for i in 0..n {
            values[(j + 1) * n + i] = e * values[j * n + i] + w_old * g.at(j)[i] + w_new * g.at(j + 1)[i];
        }
    }
    let decay_total = (-eta * period).exp();
    let y0: Vec<f64> = (0..n).map(|i| values[m * n + i] / (1.0 - decay_total)).collect();
    let mut decay = 1.0;
    for j in 0..=m {
        for i in 0..n {
            values[j * n + i] += decay * y0[i];
        }
        decay *= e;
    }
    values[m * n..].copy_from_slice(&y0);
    GridFunction::new(grid, n, values)?.into_periodic()
}

/// `1 - e^{-z}(1 + z)`, with a series near zero to avoid cancellation.
fn one_minus_exp_times_linear(z: f64) -> f64 {
    if z.abs() < 0.1 {
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 1..=14 {
            term *= -z / k as f64;
            if k >= 2 {
                sum += term * (k - 1) as f64;
            }
        }
        sum
    } else {
        1.0 - (-z).exp() * (1.0 + z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Term, TermTable, TimeFactor};
    use std::f64::consts::PI;

    fn first_order(comps: Vec<Vec<Term>>, period: f64) -> VectorField {
        VectorField::from_terms(RhsKind::FirstOrder, period, 1.0, TermTable { components: comps }).unwrap()
    }

    fn decay() -> VectorField {
        first_order(vec![vec![Term::state(-1.0, 0, 1)]], 1.0)
    }

    fn forced_decay() -> VectorField {
        first_order(
            vec![vec![Term::state(-1.0, 0, 1), Term::forcing(1.0, TimeFactor::Cos { omega: 2.0 * PI, phase: 0.0 })]],
            1.0,
        )
    }

    /// Periodic solution of x' = -x + cos(2πt): (cos 2πt + 2π sin 2πt)/(1 + 4π²).
    fn forced_decay_solution(t: f64) -> f64 {
        ((2.0 * PI * t).cos() + 2.0 * PI * (2.0 * PI * t).sin()) / (1.0 + 4.0 * PI * PI)
    }

    fn unit(m: usize) -> Grid {
        Grid::new(0.0, 1.0, m).unwrap()
    }

    #[test]
    fn flow_examples() {
        let zero = first_order(vec![vec![], vec![]], 1.0);
        let r = flow(&zero, &[1.5, -2.0], &unit(8)).unwrap();
        assert!(r.trajectory.values().chunks(2).all(|c| c == [1.5, -2.0]));
        assert_eq!(r.endpoint, r.trajectory.last());

        let r = flow(&decay(), &[1.0], &unit(64)).unwrap();
        assert!((r.endpoint[0] - (-1.0f64).exp()).abs() < 1e-6);

        let rot = first_order(vec![vec![Term::state(1.0, 1, 1)], vec![Term::state(-1.0, 0, 1)]], PI);
        let r = flow(&rot, &[1.0, 0.0], &Grid::new(0.0, PI, 128).unwrap()).unwrap();
        assert!((r.endpoint[0] + 1.0).abs() < 1e-6 && r.endpoint[1].abs() < 1e-6);
    }

    #[test]
    fn flow_is_bitwise_deterministic() {
        let a = flow(&forced_decay(), &[0.3], &unit(256)).unwrap();
        let b = flow(&forced_decay(), &[0.3], &unit(256)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn flow_reports_failing_step() {
        let blowup = first_order(vec![vec![Term::state(1.0, 0, 5)]], 1.0);
        match flow(&blowup, &[50.0], &unit(64)) {
            Err(Error::Integration { step, .. }) => assert!(step < 64),
            other => panic!("expected integration error, got {other:?}"),
        }
    }

    #[test]
    fn rk4_is_fourth_order() {
        let exact = (-1.0f64).exp();
        let err = |m| (poincare(&decay(), &[1.0], &unit(m)).unwrap()[0] - exact).abs();
        for m in [4, 8, 16] {
            assert!(err(m) / err(2 * m) >= 12.0);
        }
    }

    #[test]
    fn semigroup_property() {
        let f = forced_decay();
        let full = poincare(&f, &[0.7], &Grid::new(0.0, 1.0, 256).unwrap()).unwrap();
        let half = poincare(&f, &[0.7], &Grid::new(0.0, 0.5, 128).unwrap()).unwrap();
        let rest = flow(&f, &half, &Grid::new(0.5, 1.0, 128).unwrap()).unwrap().endpoint;
        assert!((full[0] - rest[0]).abs() <= 1e-8 * full[0].abs().max(1.0));
    }

    #[test]
    fn poincare_examples() {
        let zero = first_order(vec![vec![]], 1.0);
        assert_eq!(poincare(&zero, &[0.25], &unit(16)).unwrap(), vec![0.25]);
        let p = poincare(&decay(), &[2.0], &unit(64)).unwrap();
        assert!((p[0] - 2.0 * (-1.0f64).exp()).abs() < 1e-6);
        // fixed point of the forced decay map equals the periodic solution at 0
        let x0 = forced_decay_solution(0.0);
        let p = poincare(&forced_decay(), &[x0], &unit(256)).unwrap();
        assert!((p[0] - x0).abs() < 1e-5);
    }

    #[test]
    fn mu_periodic_tracks_flow() {
        let traj = mu_periodic(&forced_decay(), &[forced_decay_solution(0.0)], &unit(256)).unwrap();
        for (j, t) in unit(256).nodes().enumerate() {
            assert!((traj.at(j)[0] - forced_decay_solution(t)).abs() < 1e-6);
        }
    }

    #[test]
    fn backward_flow_inverts_forward() {
        let p_hat = inverse_poincare(&decay(), &[1.0], &unit(64)).unwrap();
        assert!((p_hat[0] - std::f64::consts::E).abs() < 1e-6);
        let f = forced_decay();
        let there = poincare(&f, &[0.4], &unit(128)).unwrap();
        let back = inverse_poincare(&f, &there, &unit(128)).unwrap();
        assert!((back[0] - 0.4).abs() < 1e-9);
    }

    fn second_order(coeff: f64) -> VectorField {
        VectorField::from_terms(
            RhsKind::SecondOrder,
            1.0,
            coeff.abs(),
            TermTable { components: vec![vec![Term::state(coeff, 0, 1)]] },
        )
        .unwrap()
    }

    #[test]
    fn mu_dirichlet_examples() {
        let zero =
            VectorField::from_terms(RhsKind::SecondOrder, 1.0, 0.0, TermTable { components: vec![vec![]] }).unwrap();
        let x = mu_dirichlet(&zero, &[0.5], &[-1.0], &unit(16)).unwrap();
        for (j, t) in unit(16).nodes().enumerate() {
            assert!((x.value.at(j)[0] - (0.5 * t - 1.0)).abs() < 1e-15);
            assert_eq!(x.slope.at(j)[0], 0.5);
        }
        let f = second_order(1.0);
        let x = mu_dirichlet(&f, &[1.0], &[0.0], &unit(256)).unwrap();
        assert!((x.value.last()[0] - 1.0f64.sinh()).abs() < 1e-6);
        assert_eq!(x.slope.first()[0], 1.0);
        let x = mu_dirichlet(&f, &[0.0], &[1.0], &unit(256)).unwrap();
        assert!((x.value.last()[0] - 1.0f64.cosh()).abs() < 1e-6);
    }

    #[test]
    fn shooting_examples() {
        let zero =
            VectorField::from_terms(RhsKind::SecondOrder, 1.0, 0.0, TermTable { components: vec![vec![]] }).unwrap();
        assert!((shooting(&zero, &[0.3], &unit(16)).unwrap()[0] - 0.3).abs() < 1e-15);
        assert!((shooting(&second_order(1.0), &[2.0], &unit(256)).unwrap()[0] - 2.0 * 1.0f64.sinh()).abs() < 1e-6);
        assert!(shooting(&second_order(-PI * PI), &[1.0], &unit(256)).unwrap()[0].abs() < 1e-5);
    }

    fn delay_field(comps: Vec<Vec<Term>>) -> VectorField {
        VectorField::from_terms(RhsKind::Delay, 1.0, 1.0, TermTable { components: comps }).unwrap()
    }

    #[test]
    fn dde_flow_examples() {
        let hist_grid = Grid::new(-0.5, 0.0, 32).unwrap();
        let history = GridFunction::from_fn(hist_grid, 1, |t, o| o[0] = (3.0 * t).sin() + 0.2).unwrap();
        let x = dde_flow(&delay_field(vec![vec![]]), &history, 1.0).unwrap();
        let y0 = history.last()[0];
        assert!((0..=32 + 64).skip(32).all(|k| x.at(k)[0] == y0));
        assert_eq!(x.grid().start(), -0.5);

        let hist_grid = Grid::new(-1.0, 0.0, 16).unwrap();
        let ones = GridFunction::constant(hist_grid, &[1.0]);
        let x = dde_flow(&delay_field(vec![vec![Term::delayed(-1.0, 0, 1)]]), &ones, 1.0).unwrap();
        for k in 16..=32 {
            let t = (k - 16) as f64 / 16.0;
            assert!((x.at(k)[0] - (1.0 - t)).abs() < 1e-14);
        }
    }

    #[test]
    fn dde_flow_without_delay_matches_ode() {
        let forcing = Term::forcing(1.0, TimeFactor::Sin { omega: 2.0 * PI, phase: 0.0 });
        let dde = delay_field(vec![vec![Term::state(-1.0, 0, 1), forcing.clone()]]);
        let ode = first_order(vec![vec![Term::state(-1.0, 0, 1), forcing]], 1.0);
        let history = GridFunction::from_fn(Grid::new(-0.5, 0.0, 64).unwrap(), 1, |t, o| o[0] = 1.0 + t).unwrap();
        let x = dde_flow(&dde, &history, 1.0).unwrap();
        let reference = flow(&ode, &[1.0], &unit(128)).unwrap();
        for j in 0..=128 {
            assert!((x.at(64 + j)[0] - reference.trajectory.at(j)[0]).abs() < 1e-8);
        }
        // variation of constants: x(1) = e^{-1} + ∫_0^1 e^{-(1-s)} sin(2πs) ds
        let k = 2.0 * PI;
        let integral = k * ((-1.0f64).exp() - 1.0) / (1.0 + k * k);
        let exact = (-1.0f64).exp() + integral;
        assert!((x.last()[0] - exact).abs() < 1e-5, "{} vs {}", x.last()[0], exact);
    }

    #[test]
    fn dde_flow_rejects_misaligned_horizon() {
        let history = GridFunction::constant(Grid::new(-0.5, 0.0, 8).unwrap(), &[1.0]);
        let f = delay_field(vec![vec![Term::delayed(-1.0, 0, 1)]]);
        assert!(matches!(dde_flow(&f, &history, 0.3), Err(Error::DelayMisaligned { .. })));
    }

    #[test]
    fn eta_solve_examples() {
        let zero = first_order(vec![vec![]], 1.0);
        let y = eta_periodic_solve(&zero, 1.0, &GridFunction::constant(unit(64), &[0.7])).unwrap();
        assert!(y.values().iter().all(|v| (v - 0.7).abs() < 1e-12));
        assert!(y.is_periodic());

        let x_star = GridFunction::from_fn(unit(256), 1, |t, o| o[0] = forced_decay_solution(t)).unwrap();
        for eta in [1.0, -1.0, 3.0] {
            let y = eta_periodic_solve(&forced_decay(), eta, &x_star).unwrap();
            assert!(y.distance(&x_star).unwrap() < 5e-5, "eta={eta}");
        }

        // y' + y = cos 2πt: amplitude 1/sqrt(1+4π²)
        let y = eta_periodic_solve(&forced_decay(), 1.0, &GridFunction::zeros(unit(256), 1)).unwrap();
        let amp = 1.0 / (1.0 + 4.0 * PI * PI).sqrt();
        assert!((y.sup_norm() - amp).abs() < 1e-4);
    }

    #[test]
    fn exp_linear_series_matches_direct_formula() {
        for z in [0.099f64, -0.099, 0.05, -0.02] {
            let direct = 1.0 - (-z).exp() * (1.0 + z);
            assert!((one_minus_exp_times_linear(z) - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn eta_solve_rejects_singular_eta() {
        assert!(matches!(
            eta_periodic_solve(&decay(), 0.0, &GridFunction::zeros(unit(8), 1)),
            Err(Error::SingularEta { .. })
        ));
        assert!(eta_periodic_solve(&decay(), 1e-14, &GridFunction::zeros(unit(8), 1)).is_err());
    }

    #[test]
    fn gronwall_bound_holds_on_trajectory_pairs() {
        // x' = x - x^3 with declared Lipschitz bound 11 on |x| <= 2
        let f = VectorField::from_terms(
            RhsKind::FirstOrder,
            1.0,
            11.0,
            TermTable { components: vec![vec![Term::state(1.0, 0, 1), Term::state(-1.0, 0, 3)]] },
        )
        .unwrap();
        let grid = unit(256);
        for (a, b) in [(0.1, 0.2), (-1.5, -1.4), (1.9, 1.95), (0.0, 1e-3)] {
            let xa = flow(&f, &[a], &grid).unwrap().trajectory;
            let xb = flow(&f, &[b], &grid).unwrap().trajectory;
            let gap = (a - b).abs();
            let bound = (f.lipschitz() * grid.len()).exp() * gap;
            assert!(xa.distance(&xb).unwrap() <= bound);
        }
    }
}
