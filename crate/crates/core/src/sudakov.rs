//! Transport in `d >= 2` along analytic families of rays.
//!
//! A problem is split into one-dimensional problems on disjoint rays: parallel lines
//! when the two measures are products differing in a single factor, or half-lines from a
//! common center when both are radially symmetric. The 1D field of each ray, times the
//! ray direction, is the d-dimensional field.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{flow, flow_derivative};
use crate::map::{compute_monotone_map, find_fixed_points, MonotoneMap};
use crate::measure::{wasserstein1, Measure1D};
use crate::velocity::{build_general, BuildOptions, SeedSpec, VelocityField1D};

/// Radial Gaussian laws are cut at `mean + RADIAL_GAUSSIAN_CUT * sd` beyond `sqrt(d) sd`.
const RADIAL_GAUSSIAN_CUT: f64 = 8.0;

/// JSON description: `{"class": ..., "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", content = "params", rename_all = "snake_case")]
pub enum MeasureNDSpec {
    /// Uniform on the box `prod [lo_j, hi_j]`.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Independent normal coordinates.
    Gaussian { mean: Vec<f64>, sd: Vec<f64> },
    /// Uniform on a ball.
    Ball { center: Vec<f64>, radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum RadialLaw {
    Uniform(f64),
    Gaussian(f64),
}

/// A probability measure on `R^d`.
#[derive(Debug, Clone)]
pub struct MeasureND {
    spec: MeasureNDSpec,
    factors: Option<Vec<Measure1D>>,
}

impl MeasureND {
    pub fn new(spec: MeasureNDSpec) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidMeasure(msg));
        let factors = match &spec {
            MeasureNDSpec::Box { lo, hi } => {
                if lo.len() != hi.len() {
                    return bad(format!("box bounds have lengths {} and {}", lo.len(), hi.len()));
                }
                Some(lo.iter().zip(hi).map(|(&a, &b)| Measure1D::uniform(a, b)).collect::<Result<_>>()?)
            }
            MeasureNDSpec::Gaussian { mean, sd } => {
                if mean.len() != sd.len() {
                    return bad(format!("gaussian mean and sd have lengths {} and {}", mean.len(), sd.len()));
                }
                Some(mean.iter().zip(sd).map(|(&m, &s)| Measure1D::gaussian(m, s)).collect::<Result<_>>()?)
            }
            MeasureNDSpec::Ball { center, radius } => {
                if !(*radius > 0.0 && radius.is_finite()) || center.iter().any(|c| !c.is_finite()) {
                    return bad(format!("ball needs a finite center and radius > 0, got {radius}"));
                }
                None
            }
        };
        let m = MeasureND { spec, factors };
        if m.dim() < 2 {
            return bad(format!("dimension {} is below 2", m.dim()));
        }
        Ok(m)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: MeasureNDSpec = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::new(spec)
    }

    pub fn spec(&self) -> &MeasureNDSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        match &self.spec {
            MeasureNDSpec::Box { lo, .. } => lo.len(),
            MeasureNDSpec::Gaussian { mean, .. } => mean.len(),
            MeasureNDSpec::Ball { center, .. } => center.len(),
        }
    }

    fn radial(&self) -> Option<(Vec<f64>, RadialLaw)> {
        match &self.spec {
            MeasureNDSpec::Ball { center, radius } => Some((center.clone(), RadialLaw::Uniform(*radius))),
            MeasureNDSpec::Gaussian { mean, sd } if sd.iter().all(|&s| s == sd[0]) => {
                Some((mean.clone(), RadialLaw::Gaussian(sd[0])))
            }
            _ => None,
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        match &self.spec {
            MeasureNDSpec::Box { lo, hi } => lo.iter().zip(hi).map(|(&a, &b)| rng.gen_range(a..b)).collect(),
            MeasureNDSpec::Gaussian { mean, sd } => mean
                .iter()
                .zip(sd)
                .map(|(&m, &s)| m + s * rng.sample::<f64, _>(StandardNormal))
                .collect(),
            MeasureNDSpec::Ball { center, radius } => {
                let d = center.len();
                let u = unit_vector(rng, d);
                let r = radius * rng.gen::<f64>().powf(1.0 / d as f64);
                center.iter().zip(&u).map(|(c, e)| c + r * e).collect()
            }
        }
    }
}

fn unit_vector<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&g);
        if n > 1e-12 {
            return g.into_iter().map(|x| x / n).collect();
        }
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Surface area of the unit sphere in `R^d`.
fn sphere_area(d: usize) -> f64 {
    // |S^{d-1}| = 2 pi^{d/2} / Gamma(d/2), by the recursion |S^{d+1}| = 2 pi |S^{d-1}| / d.
    let (mut area, mut k) = if d.is_multiple_of(2) { (2.0 * PI, 2) } else { (2.0, 1) };
    while k < d {
        area *= 2.0 * PI / k as f64;
        k += 2;
    }
    area
}

/// Law of `|X - center|` when `X` has the given radial law in `R^d`.
fn radial_conditional(law: RadialLaw, d: usize) -> Result<Measure1D> {
    let p = (d - 1) as i32;
    match law {
        RadialLaw::Uniform(r) if d == 2 => Measure1D::piecewise(vec![0.0, r], vec![0.0, r]),
        RadialLaw::Uniform(r) => Measure1D::from_density(std::sync::Arc::new(move |t: f64| t.powi(p)), 0.0, r),
        RadialLaw::Gaussian(s) => {
            let cut = s * ((d as f64).sqrt() + RADIAL_GAUSSIAN_CUT);
            Measure1D::from_density(
                std::sync::Arc::new(move |t: f64| t.powi(p) * (-0.5 * (t / s) * (t / s)).exp()),
                0.0,
                cut,
            )
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RayKind {
    /// Lines `base + s e_axis`.
    Parallel { axis: usize },
    /// Half-lines `center + r u`, `|u| = 1`.
    Radial { center: Vec<f64> },
}

/// One ray: `base + s * direction`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ray {
    pub base: Vec<f64>,
    pub direction: Vec<f64>,
}

impl Ray {
    pub fn point(&self, s: f64) -> Vec<f64> {
        self.base.iter().zip(&self.direction).map(|(b, e)| b + s * e).collect()
    }
}

/// Ray decomposition of a transport problem. Every ray of the supported classes carries
/// the same pair of conditional laws (in the ray parameter); the rays differ by their mass.
#[derive(Debug, Clone)]
pub struct RayFamily {
    pub dim: usize,
    pub kind: RayKind,
    /// Conditional law of the source on every ray with positive mass.
    pub source: Measure1D,
    /// Conditional law of the target on every ray with positive mass.
    pub target: Measure1D,
    cross0: Vec<Measure1D>,
    cross1: Vec<Measure1D>,
}

fn same_law(a: &Measure1D, b: &Measure1D) -> bool {
    matches!((a.to_spec(), b.to_spec()), (Some(x), Some(y)) if x == y)
}

/// Splits `m0 -> m1` into rays; only product pairs differing in one factor and radially
/// symmetric pairs about a common center are supported.
pub fn decompose(m0: &MeasureND, m1: &MeasureND) -> Result<RayFamily> {
    let d = m0.dim();
    if m1.dim() != d {
        return Err(Error::UnsupportedClass(format!("dimensions differ: {d} and {}", m1.dim())));
    }
    if let (Some(f0), Some(f1)) = (&m0.factors, &m1.factors) {
        let differing: Vec<usize> = (0..d).filter(|&j| !same_law(&f0[j], &f1[j])).collect();
        if differing.len() <= 1 {
            let axis = differing.first().copied().unwrap_or(0);
            let others = |f: &[Measure1D]| f.iter().enumerate().filter(|(j, _)| *j != axis).map(|(_, m)| m.clone()).collect();
            return Ok(RayFamily {
                dim: d,
                kind: RayKind::Parallel { axis },
                source: f0[axis].clone(),
                target: f1[axis].clone(),
                cross0: others(f0),
                cross1: others(f1),
            });
        }
    }
    if let (Some((c0, l0)), Some((c1, l1))) = (m0.radial(), m1.radial()) {
        let same_center = c0.iter().zip(&c1).all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        if same_center {
            return Ok(RayFamily {
                dim: d,
                kind: RayKind::Radial { center: c0 },
                source: radial_conditional(l0, d)?,
                target: radial_conditional(l1, d)?,
                cross0: Vec::new(),
                cross1: Vec::new(),
            });
        }
    }
    Err(Error::UnsupportedClass(
        "the pair is neither a product pair differing in one factor nor radially symmetric about a common center"
            .into(),
    ))
}

impl RayFamily {
    /// Ray with the given index: the `d - 1` transverse coordinates for parallel rays, a
    /// direction (normalized here) for radial ones.
    pub fn ray(&self, index: &[f64]) -> Result<Ray> {
        match &self.kind {
            RayKind::Parallel { axis } => {
                if index.len() + 1 != self.dim {
                    return Err(Error::Domain(format!("parallel ray index needs {} coordinates", self.dim - 1)));
                }
                let mut base = index.to_vec();
                base.insert(*axis, 0.0);
                let mut direction = vec![0.0; self.dim];
                direction[*axis] = 1.0;
                Ok(Ray { base, direction })
            }
            RayKind::Radial { center } => {
                let n = norm(index);
                if index.len() != self.dim || !(n > 0.0) {
                    return Err(Error::Domain("radial ray index must be a nonzero direction in R^d".into()));
                }
                Ok(Ray {
                    base: center.clone(),
                    direction: index.iter().map(|x| x / n).collect(),
                })
            }
        }
    }

    /// The ray through `x` and the parameter of `x` on it.
    pub fn locate(&self, x: &[f64]) -> Result<(Ray, f64)> {
        if x.len() != self.dim {
            return Err(Error::Domain(format!("point has {} coordinates, expected {}", x.len(), self.dim)));
        }
        match &self.kind {
            RayKind::Parallel { axis } => {
                let mut index = x.to_vec();
                let s = index.remove(*axis);
                Ok((self.ray(&index)?, s))
            }
            RayKind::Radial { center } => {
                let rel: Vec<f64> = x.iter().zip(center).map(|(a, c)| a - c).collect();
                let r = norm(&rel);
                if r == 0.0 {
                    let mut e = vec![0.0; self.dim];
                    e[0] = 1.0;
                    return Ok((self.ray(&e)?, 0.0));
                }
                Ok((self.ray(&rel)?, r))
            }
        }
    }

    /// Mass densities of the ray under the source and the target, with respect to the
    /// transverse Lebesgue (parallel) or surface (radial) measure.
    pub fn ray_mass(&self, ray: &Ray) -> (f64, f64) {
        match &self.kind {
            RayKind::Parallel { axis } => {
                let t: Vec<f64> = ray.base.iter().enumerate().filter(|(j, _)| j != axis).map(|(_, v)| *v).collect();
                let m = |f: &[Measure1D]| f.iter().zip(&t).map(|(m, &v)| m.density(v)).product::<f64>();
                (m(&self.cross0), m(&self.cross1))
            }
            RayKind::Radial { .. } => {
                let a = 1.0 / sphere_area(self.dim);
                (a, a)
            }
        }
    }

    /// Conditional laws on a ray; `None` for rays without mass.
    pub fn conditionals(&self, ray: &Ray) -> Option<(Measure1D, Measure1D)> {
        let (a, b) = self.ray_mass(ray);
        (a > 0.0 && b > 0.0).then(|| (self.source.clone(), self.target.clone()))
    }

    /// Monotone map between the conditional laws of a ray.
    pub fn per_ray_monotone_map(&self, ray: &Ray) -> Result<MonotoneMap> {
        let (c0, c1) = self
            .conditionals(ray)
            .ok_or_else(|| Error::Precondition(format!("ray through {:?} carries no mass", ray.base)))?;
        Ok(compute_monotone_map(&c0, &c1))
    }
}

/// `v(x) = v_ray(s) e_ray`.
#[derive(Debug, Clone)]
pub struct VelocityFieldND {
    family: RayFamily,
    field: VelocityField1D,
}

/// Builds the field; one 1D build serves all rays since they share their conditional laws.
pub fn assemble_field(family: &RayFamily, seed: &SeedSpec, opts: &BuildOptions) -> Result<VelocityFieldND> {
    let map = compute_monotone_map(&family.source, &family.target);
    let partition = find_fixed_points(&map, opts.tol_fp_for(&map));
    let field = build_general(&map, &partition, std::slice::from_ref(seed), opts)?;
    Ok(VelocityFieldND {
        family: family.clone(),
        field,
    })
}

impl VelocityFieldND {
    pub fn family(&self) -> &RayFamily {
        &self.family
    }

    /// The 1D field along every ray.
    pub fn ray_field(&self) -> &VelocityField1D {
        &self.field
    }

    fn on_transport_set(&self, x: &[f64]) -> Result<(Ray, f64)> {
        let (ray, s) = self.family.locate(x)?;
        let (a, b) = self.family.ray_mass(&ray);
        let (lo, hi) = self.field.domain();
        if !(a > 0.0 && b > 0.0) || s < lo || s > hi {
            return Err(Error::OutOfTransportSet(format!("{x:?}")));
        }
        Ok((ray, s))
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (ray, s) = self.on_transport_set(x)?;
        let v = self.field.eval(s)?;
        Ok(ray.direction.iter().map(|e| v * e).collect())
    }

    pub fn flow(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let (ray, s) = self.on_transport_set(x)?;
        Ok(ray.point(flow(&self.field, t, s)?))
    }

    /// `(x, v(x))` for every point on the transport set.
    pub fn sample_table(&self, xs: &[Vec<f64>]) -> Vec<(Vec<f64>, Vec<f64>)> {
        xs.iter().filter_map(|x| self.eval(x).ok().map(|v| (x.clone(), v))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NdVerifyOptions {
    pub n_samples: usize,
    /// Rays checked one by one.
    pub rays: usize,
    /// Projection directions for the sliced distance.
    pub slices: usize,
    /// Nodes per ray for the 1D pushforward.
    pub ray_grid: usize,
    pub rng_seed: u64,
    pub tol_sliced: f64,
    pub tol_ray_w1: f64,
    pub tol_mass: f64,
    pub tol_confinement: f64,
}

impl Default for NdVerifyOptions {
    fn default() -> Self {
        NdVerifyOptions {
            n_samples: 100_000,
            rays: 64,
            slices: 64,
            ray_grid: 4096,
            rng_seed: 0x5eed,
            tol_sliced: 2e-3,
            tol_ray_w1: 1e-4,
            tol_mass: 1e-10,
            tol_confinement: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RayCheck {
    pub ray: Ray,
    pub w1: f64,
    pub mass_source: f64,
    pub mass_target: f64,
    /// Largest distance of a flowed node from its ray.
    pub confinement: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NdReport {
    pub schema_version: String,
    pub dim: usize,
    pub kind: RayKind,
    pub n_samples: usize,
    /// Samples whose flow failed (off the transport set).
    pub failed_samples: usize,
    pub rng_seed: u64,
    /// Mean over directions of `W1` between the projected pushforward and target samples.
    pub sliced_w1: f64,
    /// The same statistic for two independent target samples, for scale.
    pub sliced_noise: f64,
    pub rays: Vec<RayCheck>,
    pub skipped_rays: usize,
    pub max_ray_w1: f64,
    pub max_mass_defect: f64,
    pub max_confinement: f64,
    pub options: NdVerifyOptions,
    pub passed: bool,
    pub failures: Vec<String>,
}

fn projected_w1(a: &[Vec<f64>], b: &[Vec<f64>], dir: &[f64]) -> f64 {
    let mut pa: Vec<f64> = a.iter().map(|x| dot(x, dir)).collect();
    let mut pb: Vec<f64> = b.iter().map(|x| dot(x, dir)).collect();
    pa.sort_by(f64::total_cmp);
    pb.sort_by(f64::total_cmp);
    let n = pa.len().min(pb.len());
    if n == 0 {
        return f64::NAN;
    }
    // Equal sample sizes are assumed; with unequal sizes the quantiles are matched by rank.
    (0..n)
        .map(|k| {
            let ia = k * pa.len() / n;
            let ib = k * pb.len() / n;
            (pa[ia] - pb[ib]).abs()
        })
        .sum::<f64>()
        / n as f64
}

fn sliced_w1(a: &[Vec<f64>], b: &[Vec<f64>], dirs: &[Vec<f64>]) -> f64 {
    dirs.par_iter().map(|d| projected_w1(a, b, d)).sum::<f64>() / dirs.len() as f64
}

fn ray_indices(family: &RayFamily, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let d = family.dim;
    (0..count)
        .map(|l| {
            let q = (l as f64 + 0.5) / count as f64;
            match &family.kind {
                RayKind::Parallel { .. } if d == 2 => vec![family.cross0[0].quantile(q).unwrap_or(f64::NAN)],
                RayKind::Parallel { .. } => family
                    .cross0
                    .iter()
                    .map(|m| m.quantile(rng.gen_range(0.0..1.0)).unwrap_or(f64::NAN))
                    .collect(),
                RayKind::Radial { .. } if d == 2 => vec![(2.0 * PI * q).cos(), (2.0 * PI * q).sin()],
                RayKind::Radial { .. } => unit_vector(rng, d),
            }
        })
        .collect()
}

fn check_ray(field: &VelocityFieldND, ray: Ray, grid: usize) -> Option<RayCheck> {
    let (c0, c1) = field.family.conditionals(&ray)?;
    let (mass_source, mass_target) = field.family.ray_mass(&ray);
    let (a, b) = c0.window();
    let mut xs = Vec::with_capacity(grid);
    let mut ds = Vec::with_capacity(grid);
    let mut confinement = 0.0f64;
    for k in 0..grid {
        let s = if k + 1 == grid { b } else { a + (b - a) * k as f64 / (grid - 1) as f64 };
        let Ok(y) = field.flow(1.0, &ray.point(s)) else { continue };
        let rel: Vec<f64> = y.iter().zip(&ray.base).map(|(p, q)| p - q).collect();
        let s1 = dot(&rel, &ray.direction);
        let off: Vec<f64> = rel.iter().zip(&ray.direction).map(|(r, e)| r - s1 * e).collect();
        confinement = confinement.max(norm(&off));
        let Ok(j) = flow_derivative(&field.field, 1.0, s) else { continue };
        if xs.last().is_some_and(|&last| s1 <= last) {
            continue;
        }
        xs.push(s1);
        ds.push(c0.density(s) / j);
    }
    let w1 = Measure1D::grid(xs, ds).map(|m| wasserstein1(&m, &c1)).unwrap_or(f64::NAN);
    Some(RayCheck {
        ray,
        w1,
        mass_source,
        mass_target,
        confinement,
    })
}

/// Monte-Carlo and per-ray checks that the time-1 flow carries `m0` to `m1`.
pub fn verify_nd(field: &VelocityFieldND, m0: &MeasureND, m1: &MeasureND, opts: &NdVerifyOptions) -> NdReport {
    let d = field.family.dim;
    // Sample k of the source and of the target share a random stream, so for a correct
    // flow the paired points agree whenever both laws are parametrized alike.
    let stream_sample = |m: &MeasureND, seed: u64| -> Vec<Vec<f64>> {
        (0..opts.n_samples as u64)
            .into_par_iter()
            .map(|k| {
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                r.set_stream(k);
                m.sample(&mut r)
            })
            .collect()
    };
    let source = stream_sample(m0, opts.rng_seed);
    let target = stream_sample(m1, opts.rng_seed);
    let reference = stream_sample(m1, opts.rng_seed.wrapping_add(1));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.rng_seed.wrapping_add(2));
    let dirs: Vec<Vec<f64>> = (0..opts.slices)
        .map(|l| {
            if d == 2 {
                let th = PI * (l as f64 + 0.5) / opts.slices as f64;
                vec![th.cos(), th.sin()]
            } else {
                unit_vector(&mut rng, d)
            }
        })
        .collect();
    let indices = ray_indices(&field.family, opts.rays, &mut rng);

    let pushed: Vec<Option<Vec<f64>>> = source.par_iter().map(|x| field.flow(1.0, x).ok()).collect();
    let failed_samples = pushed.iter().filter(|p| p.is_none()).count();
    let pushed: Vec<Vec<f64>> = pushed.into_iter().flatten().collect();
    let sliced = sliced_w1(&pushed, &target, &dirs);
    let noise = sliced_w1(&reference, &target, &dirs);

    let checks: Vec<Option<RayCheck>> = indices
        .par_iter()
        .map(|idx| field.family.ray(idx).ok().and_then(|r| check_ray(field, r, opts.ray_grid)))
        .collect();
    let skipped_rays = checks.iter().filter(|c| c.is_none()).count();
    let rays: Vec<RayCheck> = checks.into_iter().flatten().collect();
    let max_ray_w1 = rays.iter().map(|r| r.w1).fold(0.0, f64::max);
    let max_mass_defect = rays.iter().map(|r| (r.mass_source - r.mass_target).abs()).fold(0.0, f64::max);
    let max_confinement = rays.iter().map(|r| r.confinement).fold(0.0, f64::max);
    let scale = field.field.map().width().max(1.0);

    let mut failures = Vec::new();
    let checks = [
        (sliced <= opts.tol_sliced, format!("sliced W1 {sliced:e} > {:e}", opts.tol_sliced)),
        (max_ray_w1 <= opts.tol_ray_w1, format!("per-ray W1 {max_ray_w1:e} > {:e}", opts.tol_ray_w1)),
        (
            max_mass_defect <= opts.tol_mass,
            format!("ray mass defect {max_mass_defect:e} > {:e}", opts.tol_mass),
        ),
        (
            max_confinement <= opts.tol_confinement * scale,
            format!("flow leaves its ray by {max_confinement:e}"),
        ),
        (failed_samples == 0, format!("{failed_samples} samples could not be flowed")),
    ];
    for (ok, msg) in checks {
        if !ok {
            failures.push(msg);
        }
    }
    NdReport {
        schema_version: "1".into(),
        dim: d,
        kind: field.family.kind.clone(),
        n_samples: opts.n_samples,
        failed_samples,
        rng_seed: opts.rng_seed,
        sliced_w1: sliced,
        sliced_noise: noise,
        rays,
        skipped_rays,
        max_ray_w1,
        max_mass_defect,
        max_confinement,
        options: *opts,
        passed: failures.is_empty(),
        failures,
    }
}
