//! Verification pipelines: fixed-point search, common-core checks between a
//! function-space domain and a finite one, homotopy admissibility
//! certificates, and the duality verdicts that compare degrees.

use std::f64::consts::TAU;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::degree::{
    box_loop, brouwer_1d, brouwer_2d_winding, brouwer_box, det_sign, finite_rank_reduce, jacobian_fd, newton,
    pullback_clearance, sigma_min, DegreeMethod, DegreeOptions, DegreeResult, DomainSpec, LocalZero,
};
use crate::error::{Error, Result};
use crate::operators::{
    build, build_finite, build_finite_with, conjugate, periodic_conjugate_k5, sup, OperatorHandle, OperatorName,
    OperatorParams, Problem, ProblemKind, Reduction, Space, Theta,
};

const FINITE_RESIDUAL: f64 = 1e-8;
const GRID_RESIDUAL: f64 = 5e-5;
const DEGENERATE_SIGMA: f64 = 1e-6;
const MATCH_TOL: f64 = 1e-3;
const MAX_LEVELS: u32 = 4;

/// Knobs shared by the pipelines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifyOptions {
    pub seed: u64,
    pub lambda_steps: usize,
    pub boundary_samples: usize,
    /// Random seeds for the function-space fixed-point search.
    pub random_seeds: usize,
    pub degree: DegreeOptions,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            seed: 0x4B52,
            lambda_steps: 8,
            boundary_samples: 64,
            random_seeds: 4,
            degree: DegreeOptions::default(),
        }
    }
}

impl CertifyOptions {
    pub fn with_seed(seed: u64) -> Self {
        let mut o = CertifyOptions { seed, ..Default::default() };
        o.degree.seed = seed;
        o
    }
}

/// Admissibility threshold: ten times the `O(h^2)` application error, floored at 1e-6.
pub fn epsilon_for(space: Space) -> f64 {
    match space {
        Space::Grid { grid, .. } | Space::C1 { grid, .. } => (10.0 * grid.step() * grid.step()).max(1e-6),
        Space::Vector { .. } => 1e-6,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPoints {
    /// Flat coordinates with local index `sgn det(I - DK)`.
    pub zeros: Vec<LocalZero>,
    pub residuals: Vec<f64>,
    pub sigma_min: Vec<f64>,
    /// Set when some Jacobian of `I - K` is numerically singular.
    pub degenerate: bool,
}

impl FixedPoints {
    pub fn points(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.zeros.iter().map(|z| &z.point)
    }

    pub fn degree(&self) -> i64 {
        self.zeros.iter().map(|z| z.index).sum()
    }
}

fn clearance(h: &OperatorHandle, domain: &DomainSpec, v: &[f64]) -> Result<f64> {
    match domain {
        DomainSpec::Pullback { .. } => pullback_clearance(h.problem(), domain, &h.space().unflatten(v)?),
        other => Ok(other.clearance(v)),
    }
}

fn fit(v: &[f64], len: usize) -> Vec<f64> {
    let mut out = v.to_vec();
    out.resize(len, 0.0);
    out
}

/// Random smooth direction of unit sup norm in flat coordinates.
fn smooth_direction(space: Space, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v = match space {
        Space::Vector { dim } => (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        Space::Grid { grid, dim, .. } | Space::C1 { grid, dim } => {
            let len = grid.len();
            let coeffs: Vec<[f64; 9]> = (0..dim).map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0))).collect();
            let mut value = Vec::with_capacity(grid.nodes_count() * dim);
            let mut slope = Vec::with_capacity(grid.nodes_count() * dim);
            for t in grid.nodes() {
                for c in &coeffs {
                    let (mut f, mut df) = (c[0], 0.0);
                    for k in 1..=4 {
                        let w = TAU * k as f64 / len;
                        let (s, co) = (w * (t - grid.start())).sin_cos();
                        f += c[2 * k - 1] * co + c[2 * k] * s;
                        df += w * (-c[2 * k - 1] * s + c[2 * k] * co);
                    }
                    value.push(f);
                    slope.push(df);
                }
            }
            if let Space::C1 { .. } = space {
                value.extend(slope);
            }
            value
        }
    };
    v.truncate(space.flat_len());
    let norm = sup(&v).max(f64::MIN_POSITIVE);
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// Constant directions `±e_i` lifted to the space (value track only for `C^1`).
fn constant_directions(space: Space) -> Vec<Vec<f64>> {
    let (dim, nodes) = match space {
        Space::Vector { dim } => (dim, 1),
        Space::Grid { dim, .. } | Space::C1 { dim, .. } => (dim, space.flat_len() / dim),
    };
    let value_nodes = if let Space::C1 { grid, .. } = space { grid.nodes_count() } else { nodes };
    let mut out = Vec::new();
    for i in 0..dim {
        for s in [1.0, -1.0] {
            let mut v = vec![0.0; space.flat_len()];
            for j in 0..value_nodes {
                v[j * dim + i] = s;
            }
            out.push(v);
        }
    }
    out
}

/// Boundary samples of `domain` in the flat coordinates of `h`. The first
/// `count` entries of a longer request are the same points, so refinements nest.
pub fn boundary_samples(h: &OperatorHandle, domain: &DomainSpec, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    domain.validate()?;
    let space = h.space();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match domain {
        DomainSpec::Box { lo, hi } => {
            if lo.len() != space.flat_len() {
                return Err(Error::DimMismatch { expected: space.flat_len(), got: lo.len() });
            }
            let mut pts = Vec::with_capacity(count);
            while pts.len() < count {
                let face = pts.len() % (2 * lo.len());
                let (axis, upper) = (face / 2, face % 2 == 1);
                let mut p: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| rng.gen_range(*a..=*b)).collect();
                p[axis] = if upper { hi[axis] } else { lo[axis] };
                pts.push(p);
            }
            Ok(pts)
        }
        DomainSpec::Ball { center, radius } => {
            if center.len() != space.flat_len() {
                return Err(Error::DimMismatch { expected: space.flat_len(), got: center.len() });
            }
            let mut dirs = constant_directions(space);
            while dirs.len() < count {
                dirs.push(smooth_direction(space, &mut rng));
            }
            dirs.truncate(count.max(1));
            Ok(dirs.into_iter().map(|d| d.iter().zip(center).map(|(d, c)| c + radius * d).collect()).collect())
        }
        DomainSpec::Pullback { reduction, lo, hi, radius } => {
            let problem = h.problem();
            let k = lo.len();
            let mut pts = Vec::with_capacity(count);
            while pts.len() < count {
                // tangential part: z - i(pi(z)) lies in ker pi
                let w = space.unflatten(&smooth_direction(space, &mut rng))?;
                let back = reduction.lift(problem, &reduction.project(problem, &w)?)?.flatten();
                let z: Vec<f64> = w.flatten().iter().zip(&back).map(|(a, b)| a - b).collect();
                if pts.len() % 2 == 0 {
                    let face = (pts.len() / 2) % (2 * k);
                    let mut u: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| rng.gen_range(*a..=*b)).collect();
                    u[face / 2] = if face % 2 == 1 { hi[face / 2] } else { lo[face / 2] };
                    let base = reduction.lift(problem, &u)?.flatten();
                    let room = (radius - sup(&base)).max(0.0);
                    let scale = rng.gen_range(0.0..=1.0) * room / sup(&z).max(f64::MIN_POSITIVE);
                    pts.push(base.iter().zip(&z).map(|(b, z)| b + scale * z).collect());
                } else {
                    let u: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| rng.gen_range(*a..*b)).collect();
                    let base = reduction.lift(problem, &u)?.flatten();
                    let (nb, nz) = (sup(&base), sup(&z).max(f64::MIN_POSITIVE));
                    if nb >= *radius {
                        continue;
                    }
                    // grow the tangential part until the sup norm reaches r
                    let (mut a, mut b) = (0.0, (radius + nb) / nz);
                    for _ in 0..60 {
                        let mid = 0.5 * (a + b);
                        let n = sup(&base.iter().zip(&z).map(|(p, q)| p + mid * q).collect::<Vec<_>>());
                        if n < *radius {
                            a = mid;
                        } else {
                            b = mid;
                        }
                    }
                    pts.push(base.iter().zip(&z).map(|(p, q)| p + b * q).collect());
                }
            }
            Ok(pts)
        }
    }
}

fn interior_seeds(h: &OperatorHandle, domain: &DomainSpec, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let space = h.space();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
    let mut out = Vec::new();
    match domain {
        DomainSpec::Box { lo, hi } => {
            let per_axis: usize = match lo.len() {
                1 => 9,
                2 => 5,
                3 => 3,
                _ => 1,
            };
            for idx in 0..per_axis.pow(lo.len() as u32) {
                let mut rem = idx;
                out.push(
                    (0..lo.len())
                        .map(|i| {
                            let c = rem % per_axis;
                            rem /= per_axis;
                            lo[i] + (hi[i] - lo[i]) * (c as f64 + 0.5) / per_axis as f64
                        })
                        .collect(),
                );
            }
            for _ in 0..count {
                out.push(lo.iter().zip(hi).map(|(a, b)| rng.gen_range(*a..*b)).collect());
            }
        }
        DomainSpec::Ball { center, radius } => {
            out.push(center.clone());
            for _ in 0..count {
                let d = smooth_direction(space, &mut rng);
                let s = rng.gen_range(0.0..0.9) * radius;
                out.push(d.iter().zip(center).map(|(d, c)| c + s * d).collect());
            }
        }
        DomainSpec::Pullback { reduction, lo, hi, .. } => {
            for _ in 0..count.max(1) {
                let u: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| rng.gen_range(*a..*b)).collect();
                out.push(reduction.lift(h.problem(), &u)?.flatten());
            }
        }
    }
    Ok(out)
}

/// Fixed points of `h` inside `domain`: Newton on `I - h` (after a few damped
/// Picard steps on function spaces) from the given seeds plus interior ones.
pub fn find_fixed_points(
    h: &OperatorHandle,
    domain: &DomainSpec,
    seeds: &[Vec<f64>],
    opts: &CertifyOptions,
) -> Result<FixedPoints> {
    let len = h.space().flat_len();
    let finite = matches!(h.space(), Space::Vector { .. });
    let accept = if finite { FINITE_RESIDUAL } else { GRID_RESIDUAL };
    let mut starts: Vec<Vec<f64>> = seeds.iter().map(|s| fit(s, len)).collect();
    starts.extend(interior_seeds(h, domain, if finite { opts.degree.seeds } else { opts.random_seeds }, opts.seed)?);
    let g = |v: &[f64]| h.defect_flat(v);

    let found: Vec<Option<Vec<f64>>> = starts
        .par_iter()
        .map(|s| {
            let mut x = s.clone();
            if !finite {
                let mut r = sup(&g(&x)?);
                for _ in 0..5 {
                    let d = g(&x)?;
                    let trial: Vec<f64> = x.iter().zip(&d).map(|(a, d)| a - 0.5 * d).collect();
                    let rt = sup(&g(&trial)?);
                    if rt >= r {
                        break;
                    }
                    x = trial;
                    r = rt;
                }
            }
            match newton(&g, &x, 40) {
                Ok(Some(p)) => Ok(Some(p)),
                Ok(None) => Ok(None),
                // a diverging start is not an error for the search
                Err(Error::Integration { .. }) | Err(Error::NonFinite { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;

    let mut pts: Vec<Vec<f64>> = Vec::new();
    for p in found.into_iter().flatten() {
        if sup(&g(&p)?) > accept || clearance(h, domain, &p)? <= 0.0 {
            continue;
        }
        let near = pts.iter().any(|q| {
            let d = p.iter().zip(q).fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
            d <= 1e-6 * (1.0 + sup(q))
        });
        if !near {
            pts.push(p);
        }
    }
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));

    let mut out = FixedPoints { zeros: vec![], residuals: vec![], sigma_min: vec![], degenerate: false };
    for p in pts {
        let jac = jacobian_fd(&g, &p, 1.0)?;
        let s = sigma_min(&jac);
        let (index, log_abs_det) = det_sign(&jac);
        out.degenerate |= s < DEGENERATE_SIGMA;
        out.residuals.push(sup(&g(&p)?));
        out.sigma_min.push(s);
        out.zeros.push(LocalZero { point: p, index, log_abs_det });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    /// Finite fixed point, if one was found.
    pub finite: Option<Vec<f64>>,
    /// `pi(x)` of the function-space fixed point, if one was found.
    pub projected: Option<Vec<f64>>,
    pub in_u1: bool,
    pub in_u2: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommonCoreReport {
    /// Smallest distance of the found solutions to `∂U1` and `∂U2`.
    pub boundary_clearances: [f64; 2],
    pub matched_pairs: Vec<MatchedPair>,
    pub verdict: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

/// Common core between fixed points of `left` in `u1` and of `right` in `u2`,
/// matched through `pi`.
#[allow(clippy::too_many_arguments)]
pub fn common_core_between(
    left: &OperatorHandle,
    left_fp: &FixedPoints,
    u1: &DomainSpec,
    right: &OperatorHandle,
    right_fp: &FixedPoints,
    u2: &DomainSpec,
    reduction: Reduction,
    epsilon: f64,
) -> Result<CommonCoreReport> {
    let problem = left.problem();
    let mut diagnostics = Vec::new();
    let mut c1 = f64::INFINITY;
    let mut projected = Vec::new();
    for p in left_fp.points() {
        c1 = c1.min(clearance(left, u1, p)?);
        projected.push(reduction.project(problem, &left.space().unflatten(p)?)?);
    }
    let mut c2 = f64::INFINITY;
    for p in right_fp.points() {
        c2 = c2.min(clearance(right, u2, p)?);
    }
    // images of the function-space solutions in the finite domain
    for v in &projected {
        c2 = c2.min(clearance(right, u2, v)?.abs());
    }

    let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= MATCH_TOL * (1.0 + y.abs()));
    let mut pairs = Vec::new();
    let mut used = vec![false; projected.len()];
    for v in right_fp.points() {
        let hit = projected.iter().position(|p| close(p, v));
        if let Some(j) = hit {
            used[j] = true;
        }
        pairs.push(MatchedPair {
            finite: Some(v.clone()),
            projected: hit.map(|j| projected[j].clone()),
            in_u1: hit.is_some(),
            in_u2: true,
        });
    }
    for (j, p) in projected.iter().enumerate() {
        if !used[j] {
            let in_u2 = clearance(right, u2, p)? > 0.0;
            pairs.push(MatchedPair { finite: None, projected: Some(p.clone()), in_u1: true, in_u2 });
        }
    }

    let degenerate = left_fp.degenerate || right_fp.degenerate;
    if degenerate {
        diagnostics.push("degenerate: non-isolated fixed points".into());
    }
    if left_fp.zeros.is_empty() && right_fp.zeros.is_empty() {
        diagnostics.push("no fixed points found on either side".into());
    }
    let all_matched = pairs.iter().all(|p| p.in_u1 && p.in_u2);
    if !all_matched {
        diagnostics.push("fixed points do not correspond across the two domains".into());
    }
    let clear = c1 >= epsilon && c2 >= epsilon;
    if !clear {
        diagnostics.push(format!("boundary too close: clearances {c1:e}, {c2:e} below {epsilon:e}"));
    }
    // no solutions on a side means nothing approaches its boundary
    let cap = |c: f64| if c.is_finite() { c } else { f64::MAX };
    Ok(CommonCoreReport {
        boundary_clearances: [cap(c1), cap(c2)],
        matched_pairs: pairs,
        verdict: clear && all_matched && !degenerate,
        diagnostics,
    })
}

/// The default common-core check of a problem: `K` over `u1` against the
/// finite operator over `u2`.
pub fn check_common_core(
    problem: Arc<Problem>,
    u1: &DomainSpec,
    u2: &DomainSpec,
    opts: &CertifyOptions,
) -> Result<CommonCoreReport> {
    let (k, finite, reduction) = default_pair(&problem)?;
    let left = build(k, problem.clone(), OperatorParams::default())?;
    let right = build_finite(finite, problem.clone())?;
    let right_fp = find_fixed_points(&right, u2, &[], opts)?;
    let seeds = lifted_seeds(&problem, reduction, &right_fp)?;
    let left_fp = find_fixed_points(&left, u1, &seeds, opts)?;
    common_core_between(&left, &left_fp, u1, &right, &right_fp, u2, reduction, epsilon_for(left.space()))
}

/// `(K, finite operator, reduction)` used for the plain duality of each problem kind.
pub fn default_pair(problem: &Problem) -> Result<(OperatorName, OperatorName, Reduction)> {
    Ok(match problem.kind() {
        ProblemKind::PeriodicOde => (OperatorName::K, OperatorName::K2, Reduction::PeriodicConst(Theta::default())),
        ProblemKind::DirichletBvp => (OperatorName::Kdir, OperatorName::Kdir2, Reduction::Dirichlet(Theta::default())),
        ProblemKind::PeriodicDde => (OperatorName::Kdelay, OperatorName::Kdelay2, Reduction::Delay),
        ProblemKind::Nonlocal1d => (OperatorName::K, OperatorName::K2, Reduction::Nonlocal),
    })
}

/// `i(v)` for every finite fixed point `v`, as function-space Newton seeds.
pub fn lifted_seeds(problem: &Problem, reduction: Reduction, fp: &FixedPoints) -> Result<Vec<Vec<f64>>> {
    fp.points().map(|v| Ok(reduction.lift(problem, v)?.flatten())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomotopyCertificate {
    pub label: String,
    pub lambda_grid: Vec<f64>,
    /// `inf ||x - H_lambda(x)||` over the lambda grid and the boundary samples.
    pub min_residual: f64,
    /// Minimum over the boundary for each lambda of the final grid.
    pub curve: Vec<f64>,
    pub refinements: u32,
    pub epsilon: f64,
    pub admissible: bool,
}

/// `(hA(x), hB(x))` at one boundary sample.
type ImagePair = (Vec<f64>, Vec<f64>);

/// Residual of the linear homotopy `lambda hA + (1 - lambda) hB` on the
/// boundary of `domain`, refined by doubling until the minimum settles.
pub fn certify_homotopy(
    ha: &OperatorHandle,
    hb: &OperatorHandle,
    domain: &DomainSpec,
    lambda_steps: usize,
    sample_count: usize,
    seed: u64,
) -> Result<HomotopyCertificate> {
    if ha.space() != hb.space() {
        return Err(Error::SpaceMismatch(format!("{} and {} act on different spaces", ha.label(), hb.label())));
    }
    let epsilon = epsilon_for(ha.space());
    let max_samples = sample_count.max(1) << MAX_LEVELS;
    let samples = boundary_samples(ha, domain, max_samples, seed)?;
    let same = ha.label() == hb.label() && std::ptr::eq(ha.problem().as_ref(), hb.problem().as_ref());

    let mut images: Vec<Option<ImagePair>> = vec![None; samples.len()];
    let mut previous: Option<f64> = None;
    for level in 0..=MAX_LEVELS {
        let count = sample_count.max(1) << level;
        let fresh: Vec<(usize, ImagePair)> = (0..count)
            .into_par_iter()
            .filter(|&j| images[j].is_none())
            .map(|j| {
                let ya = ha.apply_flat(&samples[j])?;
                let yb = if same { ya.clone() } else { hb.apply_flat(&samples[j])? };
                Ok((j, (ya, yb)))
            })
            .collect::<Result<_>>()?;
        for (j, y) in fresh {
            images[j] = Some(y);
        }
        let steps = lambda_steps.max(1) << level;
        let lambdas: Vec<f64> = (0..=steps).map(|k| k as f64 / steps as f64).collect();
        let curve: Vec<f64> = lambdas
            .iter()
            .map(|&l| {
                (0..count)
                    .map(|j| {
                        let (ya, yb) = images[j].as_ref().expect("filled above");
                        samples[j]
                            .iter()
                            .zip(ya.iter().zip(yb))
                            .fold(0.0f64, |acc, (x, (a, b))| acc.max((x - l * a - (1.0 - l) * b).abs()))
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let min = curve.iter().copied().fold(f64::INFINITY, f64::min);
        if let Some(prev) = previous {
            let stable = (min - prev).abs() <= 0.2 * prev.abs();
            if level >= 2 && stable {
                return Ok(HomotopyCertificate {
                    label: format!("{} <-> {}", ha.label(), hb.label()),
                    lambda_grid: lambdas,
                    min_residual: min,
                    curve,
                    refinements: level,
                    epsilon,
                    admissible: min >= epsilon,
                });
            }
        }
        if level == MAX_LEVELS {
            return Ok(HomotopyCertificate {
                label: format!("{} <-> {}", ha.label(), hb.label()),
                lambda_grid: lambdas,
                min_residual: min,
                curve,
                refinements: level,
                epsilon,
                admissible: false,
            });
        }
        previous = Some(min);
    }
    unreachable!("the loop returns at the last level")
}

/// Degree of `I - h` over a function-space domain: sum of local indices at the
/// fixed points found, with the boundary margin taken from a constant homotopy.
pub fn function_space_degree(
    h: &OperatorHandle,
    domain: &DomainSpec,
    seeds: &[Vec<f64>],
    reduction: Option<Reduction>,
    opts: &CertifyOptions,
) -> Result<(DegreeResult, FixedPoints, HomotopyCertificate)> {
    let fp = find_fixed_points(h, domain, seeds, opts)?;
    let boundary = certify_homotopy(h, h, domain, 1, opts.boundary_samples, opts.seed)?;
    let regular = !fp.degenerate && fp.zeros.iter().all(|z| z.index != 0);
    let mut zeros = fp.zeros.clone();
    // report pi(x) rather than the full grid vector
    for z in &mut zeros {
        z.point = match reduction {
            Some(r) => r.project(h.problem(), &h.space().unflatten(&z.point)?)?,
            None => z.point[..h.problem().dim()].to_vec(),
        };
    }
    let mut notes = vec![];
    if fp.degenerate {
        notes.push("degenerate: non-isolated fixed points".to_string());
    }
    let result = DegreeResult {
        degree: fp.degree(),
        method: DegreeMethod::JacobianSum,
        min_boundary_norm: boundary.min_residual,
        refinement_levels: boundary.refinements,
        certified: regular && boundary.admissible,
        zeros,
        notes,
    };
    Ok((result, fp, boundary))
}

/// Degree of `I - h` over `domain`, defaulting to the setup's domain for the
/// operator's space. Function-space searches are seeded with the lifted fixed
/// points of the problem's finite operator.
pub fn operator_degree(
    setup: &DualitySetup,
    h: &OperatorHandle,
    domain: Option<DomainSpec>,
    opts: &CertifyOptions,
) -> Result<DegreeResult> {
    let space = h.space();
    if let Space::Vector { dim } = space {
        let (lo, hi) = match domain {
            Some(DomainSpec::Box { lo, hi }) => (lo, hi),
            Some(other) => {
                return Err(Error::SpaceMismatch(format!("finite operators need a box domain, got {other:?}")))
            }
            None => {
                let (lo, hi) = setup.box_bounds()?;
                (lo.to_vec(), hi.to_vec())
            }
        };
        if lo.len() != dim {
            return Err(Error::DimMismatch { expected: dim, got: lo.len() });
        }
        return finite_degree(h, &lo, &hi, opts);
    }
    let domain = match domain {
        None => setup.u1_for(space),
        Some(DomainSpec::Ball { center, radius }) if center.is_empty() => {
            DomainSpec::Ball { center: vec![0.0; space.flat_len()], radius }
        }
        Some(DomainSpec::Box { .. }) => {
            return Err(Error::SpaceMismatch("function-space operators need a ball or pullback domain".into()))
        }
        Some(d) => d,
    };
    let problem = setup.problem.clone();
    let (_, finite, reduction) = default_pair(&problem)?;
    let p = build_finite(finite, problem.clone())?;
    let fp = find_fixed_points(&p, &setup.u2, &[], opts)?;
    let seeds = lifted_seeds(&problem, reduction, &fp)?;
    let reduction = (reduction.space(&problem) == space).then_some(reduction);
    Ok(function_space_degree(h, &domain, &seeds, reduction, opts)?.0)
}

/// Named duality instances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "pair", rename_all = "snake_case")]
pub enum DualityInstance {
    /// `deg(I - K, U1) = deg(I - P, U2)` for periodic problems.
    PeriodicKp,
    /// `K -> K_gamma -> K4 -> K3 -> K5` chain of homotopies.
    PeriodicChain,
    /// `deg(I - K^eta) = sgn(eta)^n deg(I - K3)`.
    EtaSign { eta: f64 },
    /// `deg(I - P^, P(U2)) = (-1)^n deg(I - P, U2)`.
    InversePoincare,
    /// `deg(I - K2, U2) = deg(S, (-1, 1)^n)` for Dirichlet problems.
    DirichletShooting,
    /// Twisting the slope block of `delta` multiplies the degree by `(-1)^n`.
    DirichletOrientation,
    /// `deg(I - K) = deg(I - P_discrete)` for delay problems.
    DelayKp,
    /// `deg(I - K) = deg(I - K2)` for the nonlocal problem.
    NonlocalKk1,
}

impl DualityInstance {
    pub fn label(&self) -> String {
        match self {
            DualityInstance::PeriodicKp => "K/K2".into(),
            DualityInstance::PeriodicChain => "K/Kgamma/K4/K3/K5".into(),
            DualityInstance::EtaSign { eta } => format!("Keta(eta={eta})/K3"),
            DualityInstance::InversePoincare => "KhatP/K2".into(),
            DualityInstance::DirichletShooting => "Kdir2/S".into(),
            DualityInstance::DirichletOrientation => "Kdir2(theta)/Kdir2".into(),
            DualityInstance::DelayKp => "Kdelay/Kdelay2".into(),
            DualityInstance::NonlocalKk1 => "K/K2".into(),
        }
    }

    pub fn applies_to(&self, kind: ProblemKind) -> bool {
        use DualityInstance::*;
        matches!(
            (self, kind),
            (PeriodicKp | PeriodicChain | EtaSign { .. } | InversePoincare, ProblemKind::PeriodicOde)
                | (DirichletShooting | DirichletOrientation, ProblemKind::DirichletBvp)
                | (DelayKp, ProblemKind::PeriodicDde)
                | (NonlocalKk1, ProblemKind::Nonlocal1d)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    HomotopyChain,
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberDegree {
    pub operator: String,
    pub degree: i64,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedResidual {
    pub operator: String,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub instance: DualityInstance,
    pub pair: String,
    pub left: DegreeResult,
    pub right: DegreeResult,
    /// Expected ratio `left / right` (a sign law; 1 for plain equalities).
    pub factor: i64,
    /// `left = factor * right` with both sides certified.
    pub equal: bool,
    pub route: Route,
    pub certificates: Vec<HomotopyCertificate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub common_core: Option<CommonCoreReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub members: Vec<MemberDegree>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub residuals: Vec<NamedResidual>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

impl DualityReport {
    /// Degrees agree, certificates are admissible, the common core holds
    /// (when checked) and every recorded residual is small.
    pub fn verdict(&self) -> bool {
        self.equal
            && self.certificates.iter().all(|c| c.admissible)
            && self.common_core.as_ref().is_none_or(|c| c.verdict)
            && self.members.iter().all(|m| m.certified && m.degree == self.left.degree)
            && self.residuals.iter().all(|r| r.residual <= GRID_RESIDUAL)
    }
}

/// Problem together with the two domains an instance compares.
#[derive(Debug, Clone)]
pub struct DualitySetup {
    pub problem: Arc<Problem>,
    /// Function-space domain (flat coordinates of the operator space).
    pub u1: DomainSpec,
    /// Finite box.
    pub u2: DomainSpec,
}

impl DualitySetup {
    /// `U1` as a sup-norm ball of radius `r` about 0 and `U2` a box.
    pub fn new(problem: Arc<Problem>, u1_radius: f64, lo: Vec<f64>, hi: Vec<f64>) -> Self {
        let tracks = match problem.kind() {
            ProblemKind::DirichletBvp | ProblemKind::Nonlocal1d => 2,
            _ => 1,
        };
        let center = vec![0.0; tracks * problem.grid().nodes_count() * problem.dim()];
        DualitySetup { problem, u1: DomainSpec::Ball { center, radius: u1_radius }, u2: DomainSpec::Box { lo, hi } }
    }

    fn box_bounds(&self) -> Result<(&[f64], &[f64])> {
        match &self.u2 {
            DomainSpec::Box { lo, hi } => Ok((lo, hi)),
            _ => Err(Error::Config { path: "u2".into(), message: "finite domain must be a box".into() }),
        }
    }

    /// `U1` re-centred for a space with a different flat length (periodic grids drop a node).
    fn u1_for(&self, space: Space) -> DomainSpec {
        match &self.u1 {
            DomainSpec::Ball { center, radius } => {
                DomainSpec::Ball { center: fit(center, space.flat_len()), radius: *radius }
            }
            other => other.clone(),
        }
    }
}

fn finite_degree(h: &OperatorHandle, lo: &[f64], hi: &[f64], opts: &CertifyOptions) -> Result<DegreeResult> {
    brouwer_box(&|v: &[f64]| h.defect_flat(v), lo, hi, &opts.degree)
}

fn uncertified(method: DegreeMethod, why: &Error) -> DegreeResult {
    DegreeResult {
        degree: 0,
        method,
        min_boundary_norm: 0.0,
        refinement_levels: 0,
        certified: false,
        zeros: vec![],
        notes: vec![why.to_string()],
    }
}

/// An uncertifiable degree is a verdict, not a failure of the run.
fn soften(r: Result<DegreeResult>, method: DegreeMethod) -> Result<DegreeResult> {
    match r {
        Err(e @ Error::Uncertifiable(_)) => Ok(uncertified(method, &e)),
        other => other,
    }
}

fn report(
    instance: DualityInstance,
    left: DegreeResult,
    right: DegreeResult,
    factor: i64,
    route: Route,
) -> DualityReport {
    let equal = left.certified && right.certified && left.degree == factor * right.degree;
    DualityReport {
        instance,
        pair: instance.label(),
        left,
        right,
        factor,
        equal,
        route,
        certificates: vec![],
        common_core: None,
        members: vec![],
        residuals: vec![],
        diagnostics: vec![],
    }
}

fn member(name: &str, r: &DegreeResult) -> MemberDegree {
    MemberDegree { operator: name.into(), degree: r.degree, certified: r.certified }
}

/// Computes both degrees of an instance and compares them.
pub fn verify_duality(setup: &DualitySetup, instance: DualityInstance, opts: &CertifyOptions) -> Result<DualityReport> {
    let problem = setup.problem.clone();
    if !instance.applies_to(problem.kind()) {
        return Err(Error::IncompatibleProblem { operator: instance.label(), kind: problem.kind().to_string() });
    }
    let n = problem.dim() as i32;
    let (lo, hi) = setup.box_bounds()?;
    let params = OperatorParams::default();
    let mut out = match instance {
        DualityInstance::PeriodicKp | DualityInstance::PeriodicChain => {
            let reduction = Reduction::PeriodicConst(Theta::default());
            let p = build_finite(OperatorName::K2, problem.clone())?;
            let right = soften(finite_degree(&p, lo, hi, opts), DegreeMethod::JacobianSum)?;
            let right_fp = find_fixed_points(&p, &setup.u2, &[], opts)?;
            let seeds = lifted_seeds(&problem, reduction, &right_fp)?;
            let k = build(OperatorName::K, problem.clone(), params.clone())?;
            let (left, left_fp, _) = function_space_degree(&k, &setup.u1, &seeds, Some(reduction), opts)?;
            let core = common_core_between(
                &k,
                &left_fp,
                &setup.u1,
                &p,
                &right_fp,
                &setup.u2,
                reduction,
                epsilon_for(k.space()),
            )?;
            let mut certificates = Vec::new();
            let mut members = Vec::new();
            if instance == DualityInstance::PeriodicKp {
                let k1 = build(OperatorName::K1, problem.clone(), params.clone())?;
                let ktilde = conjugate(&p, reduction)?;
                certificates.push(certify_homotopy(
                    &k,
                    &k1,
                    &setup.u1,
                    opts.lambda_steps,
                    opts.boundary_samples,
                    opts.seed,
                )?);
                certificates.push(certify_homotopy(
                    &k1,
                    &ktilde,
                    &setup.u1,
                    opts.lambda_steps,
                    opts.boundary_samples,
                    opts.seed,
                )?);
                let (k1_deg, _, _) = function_space_degree(&k1, &setup.u1, &seeds, Some(reduction), opts)?;
                members.push(member("K1", &k1_deg));
                let reduced =
                    soften(finite_rank_reduce(&ktilde, lo, hi, &opts.degree), DegreeMethod::FiniteRankReduction)?;
                members.push(member("i∘K2∘pi", &reduced));
            } else {
                let kgamma = build(OperatorName::Kgamma, problem.clone(), params.clone())?;
                let k4 = build(OperatorName::K4, problem.clone(), params.clone())?;
                let k3 = build(OperatorName::K3, problem.clone(), params.clone())?;
                let k5 = periodic_conjugate_k5(problem.clone())?;
                for (a, b) in [(&k, &kgamma), (&k4, &k3), (&k3, &k5)] {
                    certificates.push(certify_homotopy(
                        a,
                        b,
                        &setup.u1,
                        opts.lambda_steps,
                        opts.boundary_samples,
                        opts.seed,
                    )?);
                }
                for (name, h) in [("Kgamma", &kgamma), ("K4", &k4), ("K3", &k3), ("K5", &k5)] {
                    let (d, _, _) = function_space_degree(h, &setup.u1, &seeds, Some(reduction), opts)?;
                    members.push(member(name, &d));
                }
            }
            let mut r = report(instance, left, right, 1, Route::HomotopyChain);
            r.certificates = certificates;
            r.members = members;
            r.common_core = Some(core);
            r
        }
        DualityInstance::EtaSign { eta } => {
            let reduction = Reduction::PeriodicConst(Theta::default());
            let p = build_finite(OperatorName::K2, problem.clone())?;
            let right_fp = find_fixed_points(&p, &setup.u2, &[], opts)?;
            let seeds = lifted_seeds(&problem, reduction, &right_fp)?;
            let keta = build(OperatorName::Keta, problem.clone(), OperatorParams::eta(eta))?;
            let k3 = build(OperatorName::K3, problem.clone(), params.clone())?;
            let (left, _, _) = function_space_degree(&keta, &setup.u1_for(keta.space()), &seeds, None, opts)?;
            let (right, _, _) = function_space_degree(&k3, &setup.u1, &seeds, Some(reduction), opts)?;
            let factor = if eta < 0.0 { (-1i64).pow(n as u32) } else { 1 };
            let mut r = report(instance, left, right, factor, Route::Independent);
            r.diagnostics.push("common core waived: both sides act on function spaces over the same solutions".into());
            r
        }
        DualityInstance::InversePoincare => {
            let p = build_finite(OperatorName::K2, problem.clone())?;
            let phat = build_finite(OperatorName::KhatP, problem.clone())?;
            let right = soften(finite_degree(&p, lo, hi, opts), DegreeMethod::JacobianSum)?;
            let left = soften(inverse_poincare_degree(&p, &phat, lo, hi, opts), DegreeMethod::JacobianSum)?;
            let mut r = report(instance, left, right, (-1i64).pow(n as u32), Route::Independent);
            r.diagnostics.push("common core waived: both sides are finite".into());
            r
        }
        DualityInstance::DirichletShooting => {
            let reduction = Reduction::Dirichlet(Theta::default());
            let k2 = build_finite(OperatorName::Kdir2, problem.clone())?;
            let left = soften(finite_degree(&k2, lo, hi, opts), DegreeMethod::JacobianSum)?;
            let k = problem.dim();
            let (slo, shi) = (&lo[..k], &hi[..k]);
            let shoot = |a: &[f64]| crate::flows::shooting(problem.field(), a, problem.grid());
            let right = soften(brouwer_box(&shoot, slo, shi, &opts.degree), DegreeMethod::JacobianSum)?;
            let mut r = report(instance, left, right, 1, Route::Independent);

            // block-Jacobian sign identity at every zero, stable under halving the step
            let g = |v: &[f64]| k2.defect_flat(v);
            for z in &r.left.zeros {
                let a = &z.point[..k];
                let ds = jacobian_fd(&shoot, a, 1.0)?;
                let (s_shoot, s_half) = (det_sign(&ds).0, det_sign(&jacobian_fd(&shoot, a, 0.5)?).0);
                let (s_k2, s_k2_half) =
                    (det_sign(&jacobian_fd(&g, &z.point, 1.0)?).0, det_sign(&jacobian_fd(&g, &z.point, 0.5)?).0);
                if !(s_shoot == s_k2 && s_shoot == s_half && s_k2 == s_k2_half) {
                    r.equal = false;
                    r.diagnostics.push(format!("block sign identity fails at {:?}", z.point));
                }
            }
            let kg = build_finite(OperatorName::Kg, problem.clone())?;
            let ktilde = conjugate(&kg, Reduction::DirichletSlope)?;
            let reduced =
                soften(finite_rank_reduce(&ktilde, slo, shi, &opts.degree), DegreeMethod::FiniteRankReduction)?;
            r.members.push(member("Ktilde", &reduced));

            let right_fp = find_fixed_points(&k2, &setup.u2, &[], opts)?;
            let seeds = lifted_seeds(&problem, reduction, &right_fp)?;
            let kdir = build(OperatorName::Kdir, problem.clone(), params.clone())?;
            let (kdeg, left_fp, _) = function_space_degree(&kdir, &setup.u1, &seeds, Some(reduction), opts)?;
            r.members.push(member("Kdir", &kdeg));
            r.common_core = Some(common_core_between(
                &kdir,
                &left_fp,
                &setup.u1,
                &k2,
                &right_fp,
                &setup.u2,
                reduction,
                epsilon_for(kdir.space()),
            )?);
            r
        }
        DualityInstance::DirichletOrientation => {
            let k2 = build_finite(OperatorName::Kdir2, problem.clone())?;
            let twisted =
                build_finite_with(OperatorName::Kdir2, problem.clone(), OperatorParams::theta(Theta::flipped_slope()))?;
            let right = soften(finite_degree(&k2, lo, hi, opts), DegreeMethod::JacobianSum)?;
            let left = soften(finite_degree(&twisted, lo, hi, opts), DegreeMethod::JacobianSum)?;
            let mut r = report(instance, left, right, (-1i64).pow(n as u32), Route::Independent);
            r.diagnostics.push("common core waived: both sides are finite".into());
            r
        }
        DualityInstance::DelayKp => {
            let reduction = Reduction::Delay;
            let p = build_finite(OperatorName::Kdelay2, problem.clone())?;
            let right = soften(finite_degree(&p, lo, hi, opts), DegreeMethod::JacobianSum)?;
            let right_fp = find_fixed_points(&p, &setup.u2, &[], opts)?;
            let seeds = lifted_seeds(&problem, reduction, &right_fp)?;
            let k = build(OperatorName::Kdelay, problem.clone(), params.clone())?;
            let (left, left_fp, _) = function_space_degree(&k, &setup.u1, &seeds, Some(reduction), opts)?;
            let mut r = report(instance, left, right, 1, Route::Independent);
            if let Some(x) = left_fp.points().next() {
                for name in [OperatorName::K6, OperatorName::K7, OperatorName::K8] {
                    let h = build(name, problem.clone(), params.clone())?;
                    let v = fit(x, h.space().flat_len());
                    r.residuals.push(NamedResidual { operator: name.to_string(), residual: sup(&h.defect_flat(&v)?) });
                }
            } else {
                r.diagnostics.push("no periodic solution found for the K6/K7/K8 residuals".into());
            }
            r.common_core = Some(common_core_between(
                &k,
                &left_fp,
                &setup.u1,
                &p,
                &right_fp,
                &setup.u2,
                reduction,
                epsilon_for(k.space()),
            )?);
            r
        }
        DualityInstance::NonlocalKk1 => {
            let reduction = Reduction::Nonlocal;
            let k2 = build_finite(OperatorName::K2, problem.clone())?;
            let right = soften(finite_degree(&k2, lo, hi, opts), DegreeMethod::JacobianSum)?;
            let right_fp = find_fixed_points(&k2, &setup.u2, &[], opts)?;
            let seeds = lifted_seeds(&problem, reduction, &right_fp)?;
            let k = build(OperatorName::K, problem.clone(), params.clone())?;
            let (left, left_fp, _) = function_space_degree(&k, &setup.u1, &seeds, Some(reduction), opts)?;
            let k1 = build(OperatorName::K1, problem.clone(), params.clone())?;
            let (k1_deg, _, _) = function_space_degree(&k1, &setup.u1, &seeds, Some(reduction), opts)?;
            let mut r = report(instance, left, right, 1, Route::Independent);
            r.members.push(member("K1", &k1_deg));
            r.common_core = Some(common_core_between(
                &k,
                &left_fp,
                &setup.u1,
                &k2,
                &right_fp,
                &setup.u2,
                reduction,
                epsilon_for(k.space()),
            )?);
            r
        }
    };
    if !out.left.certified {
        out.diagnostics.push("left degree not certified".into());
    }
    if !out.right.certified {
        out.diagnostics.push("right degree not certified".into());
    }
    Ok(out)
}

/// `deg(I - P^, P(U))` where `U` is the box `[lo, hi]`. In one dimension
/// `P(U)` is the interval between `P(lo)` and `P(hi)`; in two it is bounded by
/// the image loop `P(∂U)`, along which the winding of `I - P^` is taken.
fn inverse_poincare_degree(
    p: &OperatorHandle,
    phat: &OperatorHandle,
    lo: &[f64],
    hi: &[f64],
    opts: &CertifyOptions,
) -> Result<DegreeResult> {
    let eps = opts.degree.epsilon;
    match lo.len() {
        1 => {
            let (a, b) = (p.apply_flat(lo)?[0], p.apply_flat(hi)?[0]);
            let (a, b) = if a < b { (a, b) } else { (b, a) };
            brouwer_1d(|y| Ok(phat.defect_flat(&[y])?[0]), a, b, eps)
        }
        2 => {
            let image = |q: [f64; 2]| -> Result<[f64; 2]> {
                let y = p.apply_flat(&q)?;
                let d = phat.defect_flat(&y)?;
                Ok([d[0], d[1]])
            };
            // P preserves orientation, so the image loop keeps its sense
            brouwer_2d_winding(&image, &box_loop([lo[0], lo[1]], [hi[0], hi[1]]), eps)
        }
        k => Err(Error::Uncertifiable(format!("image domains are only traced for n <= 2, got {k}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{RhsKind, Term, TermTable, TimeFactor, VectorField};
    use std::f64::consts::PI;

    fn periodic(comps: Vec<Vec<Term>>, lipschitz: f64, m: usize) -> Arc<Problem> {
        let f = VectorField::from_terms(RhsKind::FirstOrder, 1.0, lipschitz, TermTable { components: comps }).unwrap();
        Arc::new(Problem::periodic(f, m).unwrap())
    }

    fn linear() -> Arc<Problem> {
        periodic(
            vec![vec![Term::state(-1.0, 0, 1), Term::forcing(1.0, TimeFactor::Cos { omega: 2.0 * PI, phase: 0.0 })]],
            1.0,
            256,
        )
    }

    fn cubic() -> Arc<Problem> {
        periodic(vec![vec![Term::state(1.0, 0, 1), Term::state(-1.0, 0, 3)]], 11.0, 256)
    }

    fn x_star_0() -> f64 {
        1.0 / (1.0 + 4.0 * PI * PI)
    }

    fn ball(problem: &Problem, r: f64) -> DomainSpec {
        DomainSpec::Ball { center: vec![0.0; (problem.grid().nodes_count()) * problem.dim()], radius: r }
    }

    #[test]
    fn poincare_fixed_point_matches_closed_form() {
        let p = build_finite(OperatorName::K2, linear()).unwrap();
        let fp = find_fixed_points(&p, &DomainSpec::cube(1, 1.0), &[], &CertifyOptions::default()).unwrap();
        assert_eq!(fp.zeros.len(), 1);
        assert!((fp.zeros[0].point[0] - x_star_0()).abs() < 1e-5);
        assert!(!fp.degenerate);
    }

    #[test]
    fn cubic_has_three_fixed_points() {
        let p = build_finite(OperatorName::K2, cubic()).unwrap();
        let fp = find_fixed_points(&p, &DomainSpec::cube(1, 2.0), &[], &CertifyOptions::default()).unwrap();
        let xs: Vec<f64> = fp.points().map(|p| p[0]).collect();
        assert_eq!(xs.len(), 3);
        for (x, e) in xs.iter().zip([-1.0, 0.0, 1.0]) {
            assert!((x - e).abs() < 1e-4);
        }
        assert_eq!(fp.zeros.iter().map(|z| z.index).collect::<Vec<_>>(), vec![1, -1, 1]);
    }

    #[test]
    fn zero_field_is_degenerate() {
        let p = periodic(vec![vec![]], 0.0, 64);
        let k2 = build_finite(OperatorName::K2, p.clone()).unwrap();
        let fp = find_fixed_points(&k2, &DomainSpec::cube(1, 1.0), &[], &CertifyOptions::default()).unwrap();
        assert!(fp.degenerate);
        assert!(fp.zeros.len() > 1);
        assert!(fp.residuals.iter().all(|r| *r == 0.0));
        let core = check_common_core(p.clone(), &ball(&p, 2.0), &DomainSpec::cube(1, 1.0), &CertifyOptions::default())
            .unwrap();
        assert!(!core.verdict);
        assert!(core.diagnostics.iter().any(|d| d.contains("degenerate")));
    }

    #[test]
    fn common_core_on_the_linear_example() {
        let p = linear();
        let x0 = x_star_0();
        let opts = CertifyOptions::default();
        let u2 = DomainSpec::Box { lo: vec![x0 - 1.0], hi: vec![x0 + 1.0] };
        let core = check_common_core(p.clone(), &ball(&p, 0.2 + 2.0), &u2, &opts).unwrap();
        assert!(core.verdict, "{:?}", core.diagnostics);
        assert_eq!(core.matched_pairs.len(), 1);

        let tight = DomainSpec::Box { lo: vec![x0 - 1e-9], hi: vec![x0 + 1e-9] };
        let core = check_common_core(p.clone(), &ball(&p, 2.2), &tight, &opts).unwrap();
        assert!(!core.verdict);
    }

    #[test]
    fn constant_homotopy_and_chain_certificates() {
        let p = linear();
        let u1 = ball(&p, 2.5);
        let k = build(OperatorName::K, p.clone(), OperatorParams::default()).unwrap();
        let c = certify_homotopy(&k, &k, &u1, 4, 32, 7).unwrap();
        assert!(c.admissible);
        assert!(c.curve.iter().all(|v| (v - c.min_residual).abs() < 1e-15));

        let kg = build(OperatorName::Kgamma, p.clone(), OperatorParams::default()).unwrap();
        let c = certify_homotopy(&k, &kg, &u1, 8, 64, 7).unwrap();
        assert!(c.admissible && c.min_residual >= 1e-4, "{c:?}");
        assert!(c.refinements >= 2);
    }

    #[test]
    fn boundary_through_the_solution_is_inadmissible() {
        let p = linear();
        let opts = CertifyOptions::default();
        let k2 = build_finite(OperatorName::K2, p.clone()).unwrap();
        let fp = find_fixed_points(&k2, &DomainSpec::cube(1, 1.0), &[], &opts).unwrap();
        let k = build(OperatorName::K, p.clone(), OperatorParams::default()).unwrap();
        let seeds = lifted_seeds(&p, Reduction::PeriodicConst(Theta::default()), &fp).unwrap();
        let sol = find_fixed_points(&k, &ball(&p, 2.5), &seeds, &opts).unwrap();
        let x = sol.zeros[0].point.clone();
        // shift the ball by r along the constant direction so x sits on the sphere
        let r = 0.5;
        let center: Vec<f64> = x.iter().map(|v| v - r).collect();
        let k1 = build(OperatorName::K1, p.clone(), OperatorParams::default()).unwrap();
        let c = certify_homotopy(&k, &k1, &DomainSpec::Ball { center, radius: r }, 8, 64, 1).unwrap();
        assert!(c.min_residual <= 5e-5 && !c.admissible, "{c:?}");
    }

    #[test]
    fn periodic_duality_and_sign_laws() {
        let p = linear();
        let setup = DualitySetup::new(p, 2.5, vec![-1.0], vec![1.0]);
        let opts = CertifyOptions::default();
        let r = verify_duality(&setup, DualityInstance::PeriodicKp, &opts).unwrap();
        assert_eq!((r.left.degree, r.right.degree), (1, 1));
        assert!(r.verdict(), "{r:?}");

        let r = verify_duality(&setup, DualityInstance::EtaSign { eta: -1.0 }, &opts).unwrap();
        assert_eq!((r.left.degree, r.right.degree), (-1, 1));
        assert!(r.equal);

        let r = verify_duality(&setup, DualityInstance::InversePoincare, &opts).unwrap();
        assert_eq!((r.left.degree, r.right.degree, r.factor), (-1, 1, -1));
        assert!(r.equal);
    }

    #[test]
    fn cubic_duality_sums_local_degrees() {
        let setup = DualitySetup::new(cubic(), 2.0, vec![-2.0], vec![2.0]);
        let r = verify_duality(&setup, DualityInstance::PeriodicKp, &CertifyOptions::default()).unwrap();
        assert_eq!(r.left.zeros.iter().map(|z| z.index).collect::<Vec<_>>(), vec![1, -1, 1]);
        assert_eq!((r.left.degree, r.right.degree), (1, 1));
        assert!(r.verdict(), "{r:?}");
    }

    #[test]
    fn incompatible_instance_is_rejected() {
        let setup = DualitySetup::new(linear(), 2.5, vec![-1.0], vec![1.0]);
        assert!(matches!(
            verify_duality(&setup, DualityInstance::DelayKp, &CertifyOptions::default()),
            Err(Error::IncompatibleProblem { .. })
        ));
    }
}
