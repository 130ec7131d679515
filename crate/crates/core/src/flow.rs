//! Flow of an autonomous 1D field through its Abel primitive `F`, with `F' = 1/v`:
//! `phi(t, x) = F^{-1}(F(x) + t)`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{l1_distance, wasserstein1, Measure1D};
use crate::quad;
use crate::velocity::{VelocityField1D, Warning, Zone, RESIDUAL_EXCLUSION_REL, TIME_QUAD_TOL};

/// Time-`t` flow of a velocity field.
#[derive(Debug, Clone)]
pub struct FlowMap {
    field: Arc<VelocityField1D>,
}

impl FlowMap {
    pub fn new(field: VelocityField1D) -> Self {
        FlowMap { field: Arc::new(field) }
    }

    pub fn field(&self) -> &VelocityField1D {
        &self.field
    }

    /// `F(x)` on the moving interval containing `x`, or `None` on the fixed set.
    pub fn primitive(&self, x: f64) -> Result<Option<f64>> {
        let x = self.field.check_domain(x)?;
        Ok(self.field.piece_at(x).map(|p| p.primitive(x)))
    }

    pub fn flow(&self, t: f64, x: f64) -> Result<f64> {
        flow(&self.field, t, x)
    }

    /// `d phi(t, x) / dx`.
    pub fn derivative(&self, t: f64, x: f64) -> Result<f64> {
        flow_derivative(&self.field, t, x)
    }

    /// `(t_k, phi(t_k, x0))` for `steps + 1` equispaced times in `[0, t_max]`.
    pub fn trajectory(&self, x0: f64, t_max: f64, steps: usize) -> Result<Vec<(f64, f64)>> {
        let steps = steps.max(1);
        (0..=steps)
            .map(|k| {
                let t = t_max * k as f64 / steps as f64;
                Ok((t, self.flow(t, x0)?))
            })
            .collect()
    }
}

/// `phi(t, x)`; fixed points stay put.
pub fn flow(field: &VelocityField1D, t: f64, x: f64) -> Result<f64> {
    if !t.is_finite() {
        return Err(Error::Domain(format!("time {t} is not finite")));
    }
    let x = field.check_domain(x)?;
    if t == 0.0 {
        return Ok(x);
    }
    match field.piece_at(x) {
        None => Ok(x),
        Some(p) => p.point_at(p.primitive(x) + t),
    }
}

/// `d phi / dx = v(phi(t, x)) / v(x)`; `T'(p)^t` at an isolated fixed point `p`.
pub fn flow_derivative(field: &VelocityField1D, t: f64, x: f64) -> Result<f64> {
    let x = field.check_domain(x)?;
    match field.piece_at(x) {
        Some(p) => {
            let y = p.point_at(p.primitive(x) + t)?;
            Ok(p.velocity(y) / p.velocity(x))
        }
        None => {
            let isolated = field
                .fixed_zeros()
                .iter()
                .any(|c| c.lo == x && c.hi == x && !c.unresolved);
            if isolated {
                Ok(field.map().derivative(x).powf(t))
            } else {
                Ok(1.0)
            }
        }
    }
}

/// `phi(t, .)_# m0` as a piecewise-linear density on the images of `n` equispaced
/// nodes of the source window.
pub fn push_measure(field: &VelocityField1D, m0: &Measure1D, t: f64, n: usize) -> Result<Measure1D> {
    let (a, b) = m0.window();
    let n = n.max(2);
    let mut xs = Vec::with_capacity(n);
    let mut ds = Vec::with_capacity(n);
    for k in 0..n {
        let x = if k + 1 == n { b } else { a + (b - a) * k as f64 / (n - 1) as f64 };
        let y = flow(field, t, x)?;
        let j = flow_derivative(field, t, x)?;
        if xs.last().is_some_and(|&last| y <= last) {
            continue;
        }
        xs.push(y);
        ds.push(m0.density(x) / j);
    }
    Measure1D::grid(xs, ds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerifyOptions {
    /// Grid size for the pushforward.
    pub n: usize,
    pub tol_w1: f64,
    pub tol_julia: f64,
    pub tol_time: f64,
    pub tol_abel: f64,
    /// Semigroup and time-1 defects are compared with this times the domain width.
    pub tol_flow_rel: f64,
    pub monotonicity_pairs: usize,
    pub semigroup_samples: usize,
    /// Total residual sample budget, spread over the moving intervals.
    pub residual_samples: usize,
    pub osgood_intervals: usize,
    pub rng_seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            n: 4096,
            tol_w1: 5e-3,
            tol_julia: 1e-8,
            tol_time: 1e-6,
            tol_abel: 1e-6,
            tol_flow_rel: 1e-6,
            monotonicity_pairs: 10_000,
            semigroup_samples: 200,
            residual_samples: 2048,
            osgood_intervals: 20,
            rng_seed: 0x5eed,
        }
    }
}

/// Partial sums of `int dx / |v|` over the orbit intervals nearest to a fixed point.
#[derive(Debug, Clone, Serialize)]
pub struct OsgoodRow {
    pub fixed_point: f64,
    pub intervals: usize,
    pub integral: f64,
    /// `intervals` times the travel time of one orbit step.
    pub expected: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub schema_version: String,
    pub n: usize,
    pub w1: f64,
    pub l1: f64,
    pub julia_residual: f64,
    pub julia_samples: usize,
    pub time_residual: f64,
    pub abel_residual: f64,
    pub time_one_defect: f64,
    pub semigroup_defect: f64,
    pub semigroup_samples: usize,
    pub monotonicity_violations: usize,
    pub monotonicity_pairs: usize,
    pub osgood: Vec<OsgoodRow>,
    pub osgood_defect: f64,
    pub zones: Vec<Zone>,
    pub warnings: Vec<Warning>,
    pub options: VerifyOptions,
    pub passed: bool,
    pub failures: Vec<String>,
}

/// Cumulative `int dxi / |v|` over the first `m` orbit intervals toward each fixed end,
/// stopping once an anchor comes within `floor` of the fixed point.
pub fn osgood_table(field: &VelocityField1D, m: usize, floor: f64) -> Vec<OsgoodRow> {
    let mut rows = Vec::new();
    for p in field.pieces() {
        let sides = [
            (p.forward_zone.map(|z| z.fixed_point), &p.grid.forward),
            (p.backward_zone.map(|z| z.fixed_point), &p.grid.backward),
        ];
        for (fp, anchors) in sides {
            let Some(fp) = fp else { continue };
            let mut acc = 0.0;
            for (i, w) in anchors.windows(2).take(m).enumerate() {
                if (w[1] - fp).abs() <= floor {
                    break;
                }
                let (lo, hi) = if w[0] < w[1] { (w[0], w[1]) } else { (w[1], w[0]) };
                acc += quad::integrate(&|x| 1.0 / p.velocity(x).abs(), lo, hi, TIME_QUAD_TOL * p.period());
                rows.push(OsgoodRow {
                    fixed_point: fp,
                    intervals: i + 1,
                    integral: acc,
                    expected: (i + 1) as f64 * p.period(),
                });
            }
        }
    }
    rows
}

/// Run the full check suite for a field transporting `m0` to `m1`.
pub fn verify_transport(field: &VelocityField1D, m0: &Measure1D, m1: &Measure1D, opts: &VerifyOptions) -> VerificationReport {
    let map = field.map();
    let width = map.width();
    let mut failures = Vec::new();

    let (w1, l1) = match push_measure(field, m0, 1.0, opts.n) {
        Ok(pushed) => (wasserstein1(&pushed, m1), l1_distance(&pushed, m1)),
        Err(e) => {
            failures.push(format!("pushforward failed: {e}"));
            (f64::NAN, f64::NAN)
        }
    };

    let per_piece = (opts.residual_samples / field.pieces().len().max(1)).max(8);
    let xs = field.residual_samples(per_piece);
    let julia = field.julia_residual(&xs);
    let step = (xs.len() / 64).max(1);
    let sparse: Vec<f64> = xs.iter().step_by(step).copied().collect();
    let time = field.time_residual(&sparse);

    let mut abel = 0.0f64;
    let mut time_one = 0.0f64;
    for &x in &xs {
        let Some(p) = field.piece_at(x) else { continue };
        let y = map.forward(x);
        abel = abel.max((p.primitive(y) - p.primitive(x) - p.period()).abs());
        match flow(field, 1.0, x) {
            Ok(z) => time_one = time_one.max((z - y).abs()),
            Err(e) => failures.push(format!("flow failed at {x}: {e}")),
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.rng_seed);
    let (sa, sb) = map.source();
    let (da, db) = field.domain();
    let mut semigroup = 0.0f64;
    let mut sg_count = 0;
    for _ in 0..opts.semigroup_samples {
        let x = rng.gen_range(sa..=sb);
        let t = rng.gen_range(0.0..=1.0);
        let s = rng.gen_range(0.0..=(1.0 - t));
        if let (Ok(a), Ok(b)) = (flow(field, t, x).and_then(|y| flow(field, s, y)), flow(field, s + t, x)) {
            semigroup = semigroup.max((a - b).abs());
            sg_count += 1;
        }
    }

    let mut violations = 0;
    for _ in 0..opts.monotonicity_pairs {
        let mut x1 = rng.gen_range(da..=db);
        let mut x2 = rng.gen_range(da..=db);
        if x1 > x2 {
            std::mem::swap(&mut x1, &mut x2);
        }
        let t = rng.gen_range(0.0..=1.0);
        if let (Ok(y1), Ok(y2)) = (flow(field, t, x1), flow(field, t, x2)) {
            if y1 > y2 + 1e-12 * width {
                violations += 1;
            }
        }
    }

    let osgood = osgood_table(field, opts.osgood_intervals, RESIDUAL_EXCLUSION_REL * width);
    let osgood_defect = osgood.iter().map(|r| (r.integral - r.expected).abs()).fold(0.0, f64::max);

    let checks = [
        (w1 <= opts.tol_w1, format!("W1 = {w1:e} > {:e}", opts.tol_w1)),
        (julia <= opts.tol_julia, format!("Julia residual {julia:e} > {:e}", opts.tol_julia)),
        (time <= opts.tol_time, format!("time residual {time:e} > {:e}", opts.tol_time)),
        (abel <= opts.tol_abel, format!("Abel residual {abel:e} > {:e}", opts.tol_abel)),
        (
            time_one <= opts.tol_flow_rel * width,
            format!("time-1 defect {time_one:e} > {:e}", opts.tol_flow_rel * width),
        ),
        (
            semigroup <= opts.tol_flow_rel * width,
            format!("semigroup defect {semigroup:e} > {:e}", opts.tol_flow_rel * width),
        ),
        (violations == 0, format!("{violations} monotonicity violations")),
        (osgood_defect <= opts.tol_time, format!("Osgood defect {osgood_defect:e}")),
    ];
    for (ok, msg) in checks {
        if !ok {
            failures.push(msg);
        }
    }
    VerificationReport {
        schema_version: "1".into(),
        n: opts.n,
        w1,
        l1,
        julia_residual: julia,
        julia_samples: xs.len(),
        time_residual: time,
        abel_residual: abel,
        time_one_defect: time_one,
        semigroup_defect: semigroup,
        semigroup_samples: sg_count,
        monotonicity_violations: violations,
        monotonicity_pairs: opts.monotonicity_pairs,
        osgood,
        osgood_defect,
        zones: field.zones().copied().collect(),
        warnings: field.warnings().to_vec(),
        options: *opts,
        passed: failures.is_empty(),
        failures,
    }
}
