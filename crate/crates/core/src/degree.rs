//! Degree engines: sign change in one dimension, winding numbers in two,
//! regular-value Jacobian sums in small dimension, the finite-rank reduction
//! of `I - i∘F∘pi`, and Fourier block signs of `I - K^eta` for linear fields.
//!
//! Certification is empirical: sampled boundaries plus one refinement pass.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{sup, verify_right_inverse, Element, OperatorHandle, Reduction};

/// Boxed finite-dimensional map.
pub type FiniteMap<'a> = dyn Fn(&[f64]) -> Result<Vec<f64>> + Sync + 'a;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegreeMethod {
    #[serde(rename = "sign_1d")]
    Sign1d,
    #[serde(rename = "winding_2d")]
    Winding2d,
    JacobianSum,
    FiniteRankReduction,
    FourierBlocks,
}

/// A zero of `g` with its local index `sgn det Dg`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalZero {
    pub point: Vec<f64>,
    pub index: i64,
    /// `log |det Dg|`, kept in log form so large Jacobians stay finite.
    pub log_abs_det: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeResult {
    pub degree: i64,
    pub method: DegreeMethod,
    pub min_boundary_norm: f64,
    pub refinement_levels: u32,
    pub certified: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub zeros: Vec<LocalZero>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl DegreeResult {
    fn new(degree: i64, method: DegreeMethod, min_boundary_norm: f64, levels: u32, certified: bool) -> Self {
        DegreeResult {
            degree,
            method,
            min_boundary_norm,
            refinement_levels: levels,
            certified,
            zeros: vec![],
            notes: vec![],
        }
    }
}

/// Bounded open sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainSpec {
    /// Product of open intervals `(lo_i, hi_i)`.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Open sup-norm ball around `center`, given in flat coordinates of the operator space.
    Ball { center: Vec<f64>, radius: f64 },
    /// `pi^{-1}(U) ∩ B(0, r)` for a box `U` of the finite space.
    Pullback { reduction: Reduction, lo: Vec<f64>, hi: Vec<f64>, radius: f64 },
}

/// Parses `box:LO..HI[,LO..HI...]`, `ball:R` (about the origin, sized to the
/// operator space when used) or a JSON object.
impl std::str::FromStr for DomainSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |m: String| Error::Config { path: "domain".into(), message: m };
        let s = s.trim();
        let spec = if s.starts_with('{') {
            serde_json::from_str(s).map_err(|e| bad(e.to_string()))?
        } else if let Some(rest) = s.strip_prefix("box:") {
            let (mut lo, mut hi) = (vec![], vec![]);
            for part in rest.split(',') {
                let (a, b) = part.split_once("..").ok_or_else(|| bad(format!("expected LO..HI, got `{part}`")))?;
                let num = |t: &str| t.trim().parse::<f64>().map_err(|e| bad(format!("`{t}`: {e}")));
                lo.push(num(a)?);
                hi.push(num(b)?);
            }
            DomainSpec::Box { lo, hi }
        } else if let Some(r) = s.strip_prefix("ball:") {
            let radius = r.trim().parse::<f64>().map_err(|e| bad(format!("`{r}`: {e}")))?;
            DomainSpec::Ball { center: vec![], radius }
        } else {
            return Err(bad(format!("unrecognized domain `{s}` (box:LO..HI,..., ball:R or JSON)")));
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl DomainSpec {
    pub fn cube(k: usize, half_width: f64) -> Self {
        DomainSpec::Box { lo: vec![-half_width; k], hi: vec![half_width; k] }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config { path: "domain".into(), message: m });
        match self {
            DomainSpec::Box { lo, hi } | DomainSpec::Pullback { lo, hi, .. } => {
                if lo.len() != hi.len() || lo.is_empty() {
                    return bad("box bounds must have equal, positive length".into());
                }
                if lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
                    return bad("box has empty interior".into());
                }
                if let DomainSpec::Pullback { radius, .. } = self {
                    if !(*radius > 0.0) {
                        return bad(format!("radius must be > 0, got {radius}"));
                    }
                }
                Ok(())
            }
            DomainSpec::Ball { radius, .. } => {
                if !(*radius > 0.0 && radius.is_finite()) {
                    return bad(format!("radius must be > 0, got {radius}"));
                }
                Ok(())
            }
        }
    }

    /// Distance from `v` to the complement in sup norm (negative outside).
    /// Pullback domains need the problem, so they go through [`pullback_clearance`].
    pub fn clearance(&self, v: &[f64]) -> f64 {
        match self {
            DomainSpec::Box { lo, hi } => box_clearance(lo, hi, v),
            DomainSpec::Ball { center, radius } => {
                radius - v.iter().zip(center).fold(0.0f64, |acc, (a, c)| acc.max((a - c).abs()))
            }
            DomainSpec::Pullback { .. } => f64::NAN,
        }
    }
}

fn box_clearance(lo: &[f64], hi: &[f64], v: &[f64]) -> f64 {
    v.iter().zip(lo.iter().zip(hi)).fold(f64::INFINITY, |acc, (x, (a, b))| acc.min(x - a).min(b - x))
}

/// Clearance of a function-space element from the boundary of `pi^{-1}(U) ∩ B(0, r)`.
pub fn pullback_clearance(problem: &crate::operators::Problem, domain: &DomainSpec, x: &Element) -> Result<f64> {
    match domain {
        DomainSpec::Pullback { reduction, lo, hi, radius } => {
            let v = reduction.project(problem, x)?;
            Ok(box_clearance(lo, hi, &v).min(radius - x.norm()))
        }
        other => Ok(other.clearance(&x.flatten())),
    }
}

/// Engine knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegreeOptions {
    /// Boundary margin below which a degree is not certified.
    pub epsilon: f64,
    /// Random Newton starts (on top of a lattice) for the regular-value engine.
    pub seeds: usize,
    /// Random samples per face for the boundary check.
    pub face_samples: usize,
    pub seed: u64,
}

impl Default for DegreeOptions {
    fn default() -> Self {
        DegreeOptions { epsilon: 1e-6, seeds: 64, face_samples: 64, seed: 0x4B52 }
    }
}

const NEWTON_TOL: f64 = 1e-9;
const CLUSTER_RADIUS: f64 = 10.0 * NEWTON_TOL;
const DET_FLOOR: f64 = 1e-8;
const MAX_DOUBLINGS: u32 = 20;
const ROUNDING_GUARD: f64 = 0.01;

/// `deg(g, (a, b), 0) = (sgn g(b) - sgn g(a)) / 2`.
pub fn brouwer_1d(g: impl Fn(f64) -> Result<f64>, a: f64, b: f64, epsilon: f64) -> Result<DegreeResult> {
    if !(a < b) {
        return Err(Error::Config { path: "domain".into(), message: format!("empty interval ({a}, {b})") });
    }
    let (ga, gb) = (g(a)?, g(b)?);
    let margin = ga.abs().min(gb.abs());
    if margin < epsilon {
        return Err(Error::Uncertifiable(format!("|g| = {margin:e} at an endpoint of ({a}, {b})")));
    }
    let degree = ((gb.signum() - ga.signum()) / 2.0) as i64;
    Ok(DegreeResult::new(degree, DegreeMethod::Sign1d, margin, 0, true))
}

fn wrap_angle(mut d: f64) -> f64 {
    use std::f64::consts::PI;
    while d > PI {
        d -= 2.0 * PI;
    }
    while d <= -PI {
        d += 2.0 * PI;
    }
    d
}

fn winding_pass(
    g: &(dyn Fn([f64; 2]) -> Result<[f64; 2]> + Sync),
    path: &(dyn Fn(f64) -> [f64; 2] + Sync),
    samples: usize,
) -> Result<(f64, f64, f64)> {
    let values: Vec<[f64; 2]> =
        (0..samples).into_par_iter().map(|k| g(path(k as f64 / samples as f64))).collect::<Result<_>>()?;
    let mut total = 0.0;
    let mut worst: f64 = 0.0;
    let mut min_norm = f64::INFINITY;
    for k in 0..samples {
        let (p, q) = (values[k], values[(k + 1) % samples]);
        min_norm = min_norm.min(p[0].hypot(p[1]));
        let d = wrap_angle(q[1].atan2(q[0]) - p[1].atan2(p[0]));
        worst = worst.max(d.abs());
        total += d;
    }
    Ok((total, worst, min_norm))
}

/// Winding number of `g` along the closed loop `path: [0, 1) -> R^2` (counterclockwise).
pub fn brouwer_2d_winding(
    g: &(dyn Fn([f64; 2]) -> Result<[f64; 2]> + Sync),
    path: &(dyn Fn(f64) -> [f64; 2] + Sync),
    epsilon: f64,
) -> Result<DegreeResult> {
    use std::f64::consts::{FRAC_PI_2, TAU};
    let mut samples = 64usize;
    for level in 0..=MAX_DOUBLINGS {
        let (total, worst, min_norm) = winding_pass(g, path, samples)?;
        if min_norm < epsilon {
            return Err(Error::Uncertifiable(format!("|g| = {min_norm:e} on the loop")));
        }
        if worst < FRAC_PI_2 {
            // one more doubling must agree
            let (total2, _, min2) = winding_pass(g, path, 2 * samples)?;
            let turns = total / TAU;
            let degree = turns.round();
            let stable = (total2 / TAU).round() == degree;
            let certified = (turns - degree).abs() < ROUNDING_GUARD && stable && min2 >= epsilon;
            let mut r =
                DegreeResult::new(degree as i64, DegreeMethod::Winding2d, min_norm.min(min2), level + 1, certified);
            if !stable {
                r.notes.push("winding changed under one more doubling".into());
            }
            return Ok(r);
        }
        samples *= 2;
    }
    Err(Error::Uncertifiable(format!("angle increments still >= pi/2 after {MAX_DOUBLINGS} doublings")))
}

/// Counterclockwise perimeter of the rectangle `[lo, hi]`.
pub fn box_loop(lo: [f64; 2], hi: [f64; 2]) -> impl Fn(f64) -> [f64; 2] + Sync {
    move |s: f64| {
        let u = 4.0 * s.rem_euclid(1.0);
        let lerp = |a: f64, b: f64, w: f64| a + (b - a) * w;
        match u as usize {
            0 => [lerp(lo[0], hi[0], u), lo[1]],
            1 => [hi[0], lerp(lo[1], hi[1], u - 1.0)],
            2 => [lerp(hi[0], lo[0], u - 2.0), hi[1]],
            _ => [lo[0], lerp(hi[1], lo[1], u - 3.0)],
        }
    }
}

pub fn circle_loop(center: [f64; 2], radius: f64) -> impl Fn(f64) -> [f64; 2] + Sync {
    move |s: f64| {
        let a = std::f64::consts::TAU * s;
        [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
    }
}

/// Jacobian by central differences with step `1e-5 (1 + |x_j|)`, columns in parallel.
pub fn jacobian_fd(g: &FiniteMap<'_>, x: &[f64], scale: f64) -> Result<DMatrix<f64>> {
    let k = x.len();
    let cols: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|j| {
            let step = scale * 1e-5 * (1.0 + x[j].abs());
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += step;
            xm[j] -= step;
            let (gp, gm) = (g(&xp)?, g(&xm)?);
            Ok(gp.iter().zip(&gm).map(|(p, m)| (p - m) / (2.0 * step)).collect())
        })
        .collect::<Result<_>>()?;
    let rows = cols.first().map_or(0, |c| c.len());
    Ok(DMatrix::from_fn(rows, k, |i, j| cols[j][i]))
}

/// Sign and `log|det|` of a square matrix via LU.
pub fn det_sign(m: &DMatrix<f64>) -> (i64, f64) {
    let lu = m.clone().lu();
    let u = lu.u();
    let mut sign = lu.p().determinant::<f64>();
    let mut log_abs = 0.0;
    for i in 0..u.nrows() {
        let d = u[(i, i)];
        if d == 0.0 {
            return (0, f64::MIN);
        }
        sign *= d.signum();
        log_abs += d.abs().ln();
    }
    (sign as i64, log_abs)
}

pub fn sigma_min(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Damped Newton on `g = 0` with finite-difference Jacobians. `None` when it stalls.
pub fn newton(g: &FiniteMap<'_>, x0: &[f64], max_iter: usize) -> Result<Option<Vec<f64>>> {
    let mut x = x0.to_vec();
    let mut gx = g(&x)?;
    for _ in 0..max_iter {
        let norm = sup(&gx);
        if norm < NEWTON_TOL {
            return Ok(Some(x));
        }
        let jac = jacobian_fd(g, &x, 1.0)?;
        let Some(step) = jac.lu().solve(&DVector::from_column_slice(&gx)) else {
            return Ok(None);
        };
        let mut damping = 1.0;
        let mut accepted = false;
        while damping > 1e-4 {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a - damping * d).collect();
            if let Ok(gt) = g(&trial) {
                if sup(&gt) < norm * (1.0 - 1e-4 * damping) || sup(&gt) < NEWTON_TOL {
                    x = trial;
                    gx = gt;
                    accepted = true;
                    break;
                }
            }
            damping *= 0.5;
        }
        if !accepted {
            return Ok(None);
        }
    }
    Ok((sup(&gx) < NEWTON_TOL).then_some(x))
}

fn sample_box_boundary(lo: &[f64], hi: &[f64], per_face: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let k = lo.len();
    let mut pts = Vec::new();
    for face in 0..2 * k {
        let (axis, upper) = (face / 2, face % 2 == 1);
        let fixed = if upper { hi[axis] } else { lo[axis] };
        let mut centre: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
        centre[axis] = fixed;
        pts.push(centre);
        for _ in 0..per_face {
            let mut p: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| rng.gen_range(*a..=*b)).collect();
            p[axis] = fixed;
            pts.push(p);
        }
    }
    pts
}

fn seed_points(lo: &[f64], hi: &[f64], random: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let k = lo.len();
    let mut pts = Vec::new();
    let per_axis: usize = match k {
        1 => 9,
        2 => 5,
        3 => 4,
        _ => 1,
    };
    let total = per_axis.pow(k as u32);
    for idx in 0..total {
        let mut rem = idx;
        let p: Vec<f64> = (0..k)
            .map(|i| {
                let c = rem % per_axis;
                rem /= per_axis;
                lo[i] + (hi[i] - lo[i]) * (c as f64 + 0.5) / per_axis as f64
            })
            .collect();
        pts.push(p);
    }
    for _ in 0..random {
        pts.push(lo.iter().zip(hi).map(|(a, b)| rng.gen_range(*a..*b)).collect());
    }
    pts
}

fn cluster(points: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for p in points {
        let near = out.iter().any(|q| {
            let d = p.iter().zip(q).fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
            d <= CLUSTER_RADIUS * (1.0 + sup(q))
        });
        if !near {
            out.push(p);
        }
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    out
}

struct ZeroScan {
    zeros: Vec<LocalZero>,
    failures: usize,
    starts: usize,
}

fn scan_zeros(g: &FiniteMap<'_>, lo: &[f64], hi: &[f64], random: usize, seed: u64) -> Result<ZeroScan> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts = seed_points(lo, hi, random, &mut rng);
    let found: Vec<Option<Vec<f64>>> = starts.par_iter().map(|s| newton(g, s, 60)).collect::<Result<_>>()?;
    let failures = found.iter().filter(|f| f.is_none()).count();
    let inside: Vec<Vec<f64>> = found.into_iter().flatten().filter(|p| box_clearance(lo, hi, p) > 0.0).collect();
    let zeros = cluster(inside)
        .into_iter()
        .map(|p| {
            let jac = jacobian_fd(g, &p, 1.0)?;
            let (index, log_abs_det) = det_sign(&jac);
            Ok(LocalZero { point: p, index, log_abs_det })
        })
        .collect::<Result<_>>()?;
    Ok(ZeroScan { zeros, failures, starts: starts.len() })
}

/// Regular-value degree `Σ sgn det Dg(z)` over the zeros found in the box.
pub fn brouwer_nd_regular(g: &FiniteMap<'_>, lo: &[f64], hi: &[f64], opts: &DegreeOptions) -> Result<DegreeResult> {
    DomainSpec::Box { lo: lo.to_vec(), hi: hi.to_vec() }.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let boundary = sample_box_boundary(lo, hi, opts.face_samples, &mut rng);
    let margin = boundary
        .par_iter()
        .map(|p| g(p).map(|v| sup(&v)))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    if margin < opts.epsilon {
        return Err(Error::Uncertifiable(format!("|g| = {margin:e} on the sampled boundary")));
    }
    let first = scan_zeros(g, lo, hi, opts.seeds, opts.seed)?;
    let second = scan_zeros(g, lo, hi, 2 * opts.seeds, opts.seed.wrapping_add(1))?;
    let degree: i64 = first.zeros.iter().map(|z| z.index).sum();
    let degree2: i64 = second.zeros.iter().map(|z| z.index).sum();
    if first.zeros.iter().any(|z| z.index == 0) {
        return Err(Error::Uncertifiable("singular Jacobian at a zero".into()));
    }
    let regular = first.zeros.iter().all(|z| z.log_abs_det >= DET_FLOOR.ln());
    let stable = degree == degree2 && first.zeros.len() == second.zeros.len();
    let mut r = DegreeResult::new(degree, DegreeMethod::JacobianSum, margin, 1, regular && stable);
    if 2 * first.failures > first.starts {
        r.notes.push(format!("Newton failed from {} of {} starts", first.failures, first.starts));
    }
    if !stable {
        r.notes.push(format!("zero set changed under doubled seeds ({} vs {})", first.zeros.len(), second.zeros.len()));
    }
    r.zeros = first.zeros;
    Ok(r)
}

/// Picks the engine by dimension: sign change, winding number, or Jacobian sum.
pub fn brouwer_box(g: &FiniteMap<'_>, lo: &[f64], hi: &[f64], opts: &DegreeOptions) -> Result<DegreeResult> {
    DomainSpec::Box { lo: lo.to_vec(), hi: hi.to_vec() }.validate()?;
    match lo.len() {
        1 => {
            let mut r = brouwer_1d(|x| Ok(g(&[x])?[0]), lo[0], hi[0], opts.epsilon)?;
            if let Ok(nd) = brouwer_nd_regular(g, lo, hi, opts) {
                r.zeros = nd.zeros;
            }
            Ok(r)
        }
        2 => {
            let g2 = |p: [f64; 2]| -> Result<[f64; 2]> {
                let v = g(&p)?;
                Ok([v[0], v[1]])
            };
            let mut r = brouwer_2d_winding(&g2, &box_loop([lo[0], lo[1]], [hi[0], hi[1]]), opts.epsilon)?;
            if let Ok(nd) = brouwer_nd_regular(g, lo, hi, opts) {
                r.zeros = nd.zeros;
            }
            Ok(r)
        }
        _ => brouwer_nd_regular(g, lo, hi, opts),
    }
}

/// Degree of `I - h` for `h = i ∘ F ∘ pi`, computed as the Brouwer degree of
/// `I - F` over the finite box `U`. The value is the Leray–Schauder degree of
/// `I - h` over `pi^{-1}(U) ∩ B(0, r)` for every large enough `r`.
pub fn finite_rank_reduce(h: &OperatorHandle, lo: &[f64], hi: &[f64], opts: &DegreeOptions) -> Result<DegreeResult> {
    let (finite, reduction) =
        h.conjugate_parts().ok_or_else(|| Error::NotReducible(format!("{} was not built as i∘F∘pi", h.label())))?;
    verify_right_inverse(h.problem(), reduction)?;
    if lo.len() != reduction.finite_dim(h.problem()) {
        return Err(Error::DimMismatch { expected: reduction.finite_dim(h.problem()), got: lo.len() });
    }
    let g = |v: &[f64]| finite.defect_flat(v);
    let mut r = brouwer_box(&g, lo, hi, opts)?;
    r.method = DegreeMethod::FiniteRankReduction;
    Ok(r)
}

/// `Σ sgn det(I - DK(x))` over the given fixed points of a function-space operator.
pub fn grid_jacobian_sum(
    h: &OperatorHandle,
    fixed_points: &[Vec<f64>],
    min_boundary_norm: f64,
    epsilon: f64,
) -> Result<DegreeResult> {
    let g = |v: &[f64]| h.defect_flat(v);
    let mut zeros = Vec::with_capacity(fixed_points.len());
    let mut regular = true;
    for p in fixed_points {
        let jac = jacobian_fd(&g, p, 1.0)?;
        let (index, log_abs) = det_sign(&jac);
        if index == 0 || log_abs < DET_FLOOR.ln() {
            regular = false;
        }
        zeros.push(LocalZero { point: p.clone(), index, log_abs_det: log_abs });
    }
    let degree = zeros.iter().map(|z| z.index).sum();
    let mut r = DegreeResult::new(
        degree,
        DegreeMethod::JacobianSum,
        min_boundary_norm,
        1,
        regular && min_boundary_norm >= epsilon,
    );
    r.zeros = zeros;
    Ok(r)
}

/// Signs of the blocks of `I - K^eta` for `u'' = A u` in the Fourier basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierSigns {
    /// `sgn det(I - A/eta)` on the constant block.
    pub base_sign: i64,
    /// `sgn det M_k` for `k = 1..=n_max`; 0 marks a skipped collision block.
    pub block_signs: Vec<i64>,
    /// Modes with `|eta - k^2| < 1e-9`.
    pub collisions: Vec<usize>,
    pub overall: i64,
    pub all_blocks_positive: bool,
}

/// Block signs with `M_k = diag(B_k, B_k)`, `B_k = (eta I - A)/(eta - k^2)`.
pub fn fourier_block_signs(a: &DMatrix<f64>, eta: f64, n_max: usize) -> Result<FourierSigns> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimMismatch { expected: n, got: a.ncols() });
    }
    if eta == 0.0 {
        return Err(Error::SingularEta { eta, period: std::f64::consts::TAU });
    }
    let id = DMatrix::<f64>::identity(n, n);
    let (base_sign, _) = det_sign(&(&id - a / eta));
    if base_sign == 0 || sigma_min(&(&id - a / eta)) < 1e-12 {
        return Err(Error::Collision("I - A/eta is singular".into()));
    }
    let shifted = &id * eta - a;
    if sigma_min(&shifted) < 1e-12 {
        return Err(Error::Collision("eta I - A is singular".into()));
    }
    let results: Vec<(usize, Option<i64>)> = (1..=n_max)
        .into_par_iter()
        .map(|k| {
            let denom = eta - (k * k) as f64;
            if denom.abs() < 1e-9 {
                return (k, None);
            }
            let b = &shifted / denom;
            let mut m = DMatrix::<f64>::zeros(2 * n, 2 * n);
            m.view_mut((0, 0), (n, n)).copy_from(&b);
            m.view_mut((n, n), (n, n)).copy_from(&b);
            (k, Some(det_sign(&m).0))
        })
        .collect();
    let collisions: Vec<usize> = results.iter().filter(|(_, s)| s.is_none()).map(|(k, _)| *k).collect();
    let block_signs: Vec<i64> = results.iter().map(|(_, s)| s.unwrap_or(0)).collect();
    let all_blocks_positive = results.iter().all(|(_, s)| s.is_none_or(|v| v > 0));
    Ok(FourierSigns { base_sign, block_signs, collisions, overall: base_sign, all_blocks_positive })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> DegreeOptions {
        DegreeOptions::default()
    }

    #[test]
    fn one_dimensional_examples() {
        assert_eq!(brouwer_1d(Ok, -1.0, 1.0, 1e-6).unwrap().degree, 1);
        assert_eq!(brouwer_1d(|x| Ok(-x), -1.0, 1.0, 1e-6).unwrap().degree, -1);
        assert_eq!(brouwer_1d(|x| Ok(x * x * x - x), -2.0, 2.0, 1e-6).unwrap().degree, 1);
        assert!(matches!(brouwer_1d(|x| Ok(x - 1.0), -1.0, 1.0, 1e-6), Err(Error::Uncertifiable(_))));
    }

    #[test]
    fn winding_examples() {
        let id = |p: [f64; 2]| Ok(p);
        let square = box_loop([-1.0, -1.0], [1.0, 1.0]);
        let r = brouwer_2d_winding(&id, &square, 1e-6).unwrap();
        assert_eq!((r.degree, r.certified), (1, true));

        let z2 = |p: [f64; 2]| Ok([p[0] * p[0] - p[1] * p[1], 2.0 * p[0] * p[1]]);
        assert_eq!(brouwer_2d_winding(&z2, &circle_loop([0.0, 0.0], 1.0), 1e-6).unwrap().degree, 2);

        let neg = |p: [f64; 2]| Ok([-p[0], -p[1]]);
        assert_eq!(brouwer_2d_winding(&neg, &square, 1e-6).unwrap().degree, 1);

        let conj = |p: [f64; 2]| Ok([p[0], -p[1]]);
        assert_eq!(brouwer_2d_winding(&conj, &square, 1e-6).unwrap().degree, -1);
    }

    #[test]
    fn regular_value_examples() {
        for k in 1..=3 {
            let half = |v: &[f64]| Ok(v.iter().map(|x| x / 2.0).collect());
            let (lo, hi) = (vec![-1.0; k], vec![1.0; k]);
            assert_eq!(brouwer_nd_regular(&half, &lo, &hi, &opts()).unwrap().degree, 1);
            let neg = |v: &[f64]| Ok(v.iter().map(|x| -x).collect());
            let r = brouwer_nd_regular(&neg, &lo, &hi, &opts()).unwrap();
            assert_eq!(r.degree, if k % 2 == 0 { 1 } else { -1 });
            assert!(r.certified);
        }
        let cubic = |v: &[f64]| Ok(vec![v[0] * v[0] * v[0] - v[0]]);
        let r = brouwer_nd_regular(&cubic, &[-2.0], &[2.0], &opts()).unwrap();
        assert_eq!(r.degree, brouwer_1d(|x| Ok(x * x * x - x), -2.0, 2.0, 1e-6).unwrap().degree);
        assert_eq!(r.zeros.len(), 3);
        assert_eq!(r.zeros.iter().map(|z| z.index).collect::<Vec<_>>(), vec![1, -1, 1]);
    }

    #[test]
    fn excision_on_the_cubic() {
        let cubic = |v: &[f64]| Ok(vec![v[0] * v[0] * v[0] - v[0]]);
        let whole = brouwer_nd_regular(&cubic, &[-2.0], &[2.0], &opts()).unwrap().degree;
        let parts: i64 = [(-2.0, -0.5), (-0.5, 0.5), (0.5, 2.0)]
            .iter()
            .map(|&(a, b)| brouwer_nd_regular(&cubic, &[a], &[b], &opts()).unwrap().degree)
            .sum();
        assert_eq!(whole, parts);
    }

    #[test]
    fn winding_agrees_with_jacobian_sum() {
        // two simple zeros at (±0.5, 0) with opposite orientation
        let g = |v: &[f64]| Ok(vec![v[0] * v[0] - 0.25, v[1]]);
        let g2 = |p: [f64; 2]| Ok([p[0] * p[0] - 0.25, p[1]]);
        let nd = brouwer_nd_regular(&g, &[-1.0, -1.0], &[1.0, 1.0], &opts()).unwrap();
        let w = brouwer_2d_winding(&g2, &box_loop([-1.0, -1.0], [1.0, 1.0]), 1e-6).unwrap();
        assert_eq!(nd.degree, w.degree);
        assert_eq!(nd.zeros.len(), 2);
        let g = |v: &[f64]| Ok(vec![v[0] * v[0] - v[1] * v[1] - 0.1, 2.0 * v[0] * v[1]]);
        let g2 = |p: [f64; 2]| Ok([p[0] * p[0] - p[1] * p[1] - 0.1, 2.0 * p[0] * p[1]]);
        let nd = brouwer_nd_regular(&g, &[-1.0, -1.0], &[1.0, 1.0], &opts()).unwrap();
        let w = brouwer_2d_winding(&g2, &box_loop([-1.0, -1.0], [1.0, 1.0]), 1e-6).unwrap();
        assert_eq!((nd.degree, w.degree), (2, 2));
    }

    #[test]
    fn singular_zero_is_uncertifiable() {
        let g = |v: &[f64]| Ok(vec![v[0] * v[0] * v[0]]);
        assert!(brouwer_nd_regular(&g, &[-1.0], &[1.0], &opts()).map_or(true, |r| !r.certified));
    }

    #[test]
    fn fourier_examples() {
        let zero = DMatrix::<f64>::zeros(1, 1);
        let s = fourier_block_signs(&zero, 1.0, 16).unwrap();
        assert_eq!(s.overall, 1);
        assert!(s.all_blocks_positive);
        assert_eq!(s.collisions, vec![1]);

        let two = DMatrix::from_element(1, 1, 2.0);
        let s = fourier_block_signs(&two, 1.0, 16).unwrap();
        assert_eq!(s.overall, -1);
        assert!(s.all_blocks_positive);

        let s = fourier_block_signs(&zero, -1.0, 16).unwrap();
        assert_eq!(s.overall, 1);
        assert!(s.collisions.is_empty());
        let reduced = |v: &[f64]| Ok(vec![v[0] * (1.0 - 0.0 / -1.0)]);
        assert_eq!(brouwer_nd_regular(&reduced, &[-1.0], &[1.0], &opts()).unwrap().degree, s.overall);

        assert!(matches!(fourier_block_signs(&DMatrix::from_element(1, 1, 1.0), 1.0, 4), Err(Error::Collision(_))));
    }

    #[test]
    fn det_sign_handles_permutations() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(det_sign(&m).0, -1);
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, -3.0, 0.0, 0.0, 0.0, -1.0]);
        let (s, l) = det_sign(&m);
        assert_eq!(s, 1);
        assert!((l - 6.0f64.ln()).abs() < 1e-14);
    }

    fn scalar_problem(kind: crate::field::RhsKind, terms: Vec<crate::field::Term>) -> crate::operators::Problem {
        use crate::field::{TermTable, VectorField};
        use crate::operators::Problem;
        let f = VectorField::from_terms(kind, 1.0, 1.0, TermTable { components: vec![terms] }).unwrap();
        match kind {
            crate::field::RhsKind::SecondOrder => Problem::dirichlet(f, 128).unwrap(),
            _ => Problem::periodic(f, 128).unwrap(),
        }
    }

    #[test]
    fn reduction_examples() {
        use crate::field::{RhsKind, Term, TimeFactor};
        use crate::operators::{build_finite, conjugate, OperatorName, Reduction, Theta};
        use std::sync::Arc;

        let zero = Arc::new(scalar_problem(RhsKind::FirstOrder, vec![]));
        let k2 = build_finite(OperatorName::K2, zero).unwrap();
        let h = conjugate(&k2, Reduction::PeriodicConst(Theta::default())).unwrap();
        // P is the identity here, so I - F vanishes and nothing can be certified
        assert!(matches!(finite_rank_reduce(&h, &[-1.0], &[1.0], &opts()), Err(Error::Uncertifiable(_))));

        let forcing = Term::forcing(1.0, TimeFactor::Cos { omega: std::f64::consts::TAU, phase: 0.0 });
        let lin = Arc::new(scalar_problem(RhsKind::FirstOrder, vec![Term::state(-1.0, 0, 1), forcing]));
        let k2 = build_finite(OperatorName::K2, lin).unwrap();
        let h = conjugate(&k2, Reduction::PeriodicConst(Theta::default())).unwrap();
        let reduced = finite_rank_reduce(&h, &[-1.0], &[1.0], &opts()).unwrap();
        let direct = brouwer_box(&|v: &[f64]| k2.defect_flat(v), &[-1.0], &[1.0], &opts()).unwrap();
        assert_eq!(reduced.degree, 1);
        assert_eq!(reduced.degree, direct.degree);

        let sinh = Arc::new(scalar_problem(RhsKind::SecondOrder, vec![Term::state(1.0, 0, 1)]));
        let kg = build_finite(OperatorName::Kg, sinh).unwrap();
        let h = conjugate(&kg, Reduction::DirichletSlope).unwrap();
        assert_eq!(finite_rank_reduce(&h, &[-1.0], &[1.0], &opts()).unwrap().degree, 1);

        let named = crate::operators::build(
            OperatorName::K,
            Arc::new(scalar_problem(RhsKind::FirstOrder, vec![])),
            Default::default(),
        )
        .unwrap();
        assert!(matches!(finite_rank_reduce(&named, &[-1.0], &[1.0], &opts()), Err(Error::NotReducible(_))));
    }

    #[test]
    fn dirichlet_block_sign_identity() {
        use crate::field::{RhsKind, Term};
        use crate::operators::{build_finite, OperatorName};
        use std::sync::Arc;
        for (coeff, expected) in [
            (0.0, 1.0),
            (1.0, 1f64.sinh()),
            (-std::f64::consts::PI.powi(2) / 2.0, {
                let w = std::f64::consts::PI / 2f64.sqrt();
                w.sin() / w
            }),
        ] {
            let terms = if coeff == 0.0 { vec![] } else { vec![Term::state(coeff, 0, 1)] };
            let p = Arc::new(scalar_problem(RhsKind::SecondOrder, terms));
            let k2 = build_finite(OperatorName::Kdir2, p).unwrap();
            let g = |v: &[f64]| k2.defect_flat(v);
            let dk = jacobian_fd(&|v: &[f64]| k2.apply_flat(v), &[0.2, -0.1], 1.0).unwrap();
            // lower-left block vanishes and the constant block is 2
            assert!(dk[(1, 0)].abs() < 1e-8 && (dk[(1, 1)] - 2.0).abs() < 1e-8);
            assert!((dk[(0, 0)] - 1.0 - expected).abs() < 1e-6, "{} vs {}", dk[(0, 0)] - 1.0, expected);
            let jac = jacobian_fd(&g, &[0.2, -0.1], 1.0).unwrap();
            let half = jacobian_fd(&g, &[0.2, -0.1], 0.5).unwrap();
            assert_eq!(det_sign(&jac).0, expected.signum() as i64);
            assert_eq!(det_sign(&half).0, det_sign(&jac).0);
        }
    }

    #[test]
    fn domain_validation() {
        assert!(DomainSpec::Box { lo: vec![1.0], hi: vec![1.0] }.validate().is_err());
        assert!(DomainSpec::Ball { center: vec![0.0], radius: 0.0 }.validate().is_err());
        let b = DomainSpec::Ball { center: vec![0.0, 1.0], radius: 2.0 };
        assert_eq!(b.clearance(&[0.5, 1.0]), 1.5);
    }
}
