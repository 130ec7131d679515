//! One-dimensional absolutely continuous probability measures.
//!
//! Analytic families (uniform, Gaussian, affine images, piecewise-linear
//! densities) evaluate their CDF in closed form. Densities given as plain
//! functions are tabulated once at construction with adaptive quadrature.
//! Unbounded supports are cut to a finite working window at the tail levels
//! `TAIL_EPS` and `1 - TAIL_EPS`; the CDF itself stays untruncated.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::map::MonotoneMap;
use crate::quad;

/// Tail mass cut from each side of an unbounded support.
pub const TAIL_EPS: f64 = 1e-10;
/// Absolute tolerance for CDF quadrature.
pub const CDF_ABS_TOL: f64 = 1e-12;

const TABLE_CELLS: usize = 512;

pub type DensityFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// JSON description of a measure: `{"kind": ..., "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum MeasureSpec {
    /// Uniform density on `[a, b]`.
    Uniform { a: f64, b: f64 },
    /// Normal law with the given mean and standard deviation.
    Gaussian { mean: f64, sd: f64 },
    /// Density `alpha * f(alpha * (x - beta))` for the base density `f`.
    AffineImage {
        base: Box<MeasureSpec>,
        alpha: f64,
        beta: f64,
    },
    /// Piecewise-linear density through `(breaks[k], values[k])`, renormalized.
    Piecewise { breaks: Vec<f64>, values: Vec<f64> },
    /// Sampled density on the nodes `x`, linearly interpolated, renormalized.
    Grid { x: Vec<f64>, density: Vec<f64> },
}

#[derive(Clone)]
pub struct Measure1D(Arc<Inner>);

struct Inner {
    kind: Kind,
    support: (f64, f64),
    window: (f64, f64),
}

enum Kind {
    Uniform { a: f64, b: f64 },
    Gaussian { mean: f64, sd: f64 },
    Affine { base: Measure1D, alpha: f64, beta: f64 },
    Linear(Linear),
    Tabulated(Tabulated),
    Pushforward { base: Measure1D, map: MonotoneMap },
}

struct Linear {
    x: Vec<f64>,
    d: Vec<f64>,
    prefix: Vec<f64>,
    suffix: Vec<f64>,
    grid: bool,
}

struct Tabulated {
    f: DensityFn,
    x: Vec<f64>,
    prefix: Vec<f64>,
    suffix: Vec<f64>,
    norm: f64,
}

impl fmt::Debug for Measure1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match &self.0.kind {
            Kind::Uniform { .. } => "uniform",
            Kind::Gaussian { .. } => "gaussian",
            Kind::Affine { .. } => "affine_image",
            Kind::Linear(l) if l.grid => "grid",
            Kind::Linear(_) => "piecewise",
            Kind::Tabulated(_) => "tabulated",
            Kind::Pushforward { .. } => "pushforward",
        };
        write!(f, "Measure1D({name}, support={:?})", self.0.support)
    }
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidMeasure(format!("{what} must be finite, got {v}")))
    }
}

impl Measure1D {
    fn wrap(kind: Kind, support: (f64, f64), window: (f64, f64)) -> Self {
        Measure1D(Arc::new(Inner {
            kind,
            support,
            window,
        }))
    }

    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        let (a, b) = (finite(a, "a")?, finite(b, "b")?);
        if !(a < b) {
            return Err(Error::InvalidMeasure(format!("uniform needs a < b, got [{a}, {b}]")));
        }
        Ok(Self::wrap(Kind::Uniform { a, b }, (a, b), (a, b)))
    }

    pub fn gaussian(mean: f64, sd: f64) -> Result<Self> {
        let (mean, sd) = (finite(mean, "mean")?, finite(sd, "sd")?);
        if !(sd > 0.0) {
            return Err(Error::InvalidMeasure(format!("gaussian needs sd > 0, got {sd}")));
        }
        let z = std::f64::consts::SQRT_2 * erfc_inv(2.0 * TAIL_EPS);
        Ok(Self::wrap(
            Kind::Gaussian { mean, sd },
            (f64::NEG_INFINITY, f64::INFINITY),
            (mean - z * sd, mean + z * sd),
        ))
    }

    /// Image density `alpha * f(alpha * (x - beta))`, i.e. the law of `beta + X / alpha`.
    pub fn affine_image(base: &Measure1D, alpha: f64, beta: f64) -> Result<Self> {
        let (alpha, beta) = (finite(alpha, "alpha")?, finite(beta, "beta")?);
        if !(alpha > 0.0) {
            return Err(Error::InvalidMeasure(format!("affine_image needs alpha > 0, got {alpha}")));
        }
        let m = |x: f64| beta + x / alpha;
        let (s, w) = (base.support(), base.window());
        Ok(Self::wrap(
            Kind::Affine {
                base: base.clone(),
                alpha,
                beta,
            },
            (m(s.0), m(s.1)),
            (m(w.0), m(w.1)),
        ))
    }

    /// Law of `X + shift`.
    pub fn translated(&self, shift: f64) -> Result<Self> {
        Self::affine_image(self, 1.0, shift)
    }

    pub fn piecewise(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::linear(breaks, values, false)
    }

    pub fn grid(x: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        Self::linear(x, density, true)
    }

    fn linear(x: Vec<f64>, d: Vec<f64>, grid: bool) -> Result<Self> {
        let (xn, dn) = if grid { ("x", "density") } else { ("breaks", "values") };
        if x.len() < 2 || x.len() != d.len() {
            return Err(Error::InvalidMeasure(format!(
                "`{xn}` and `{dn}` need equal length >= 2 (got {} and {})",
                x.len(),
                d.len()
            )));
        }
        for (k, v) in x.iter().enumerate() {
            finite(*v, &format!("{xn}[{k}]"))?;
        }
        for k in 1..x.len() {
            if !(x[k] > x[k - 1]) {
                return Err(Error::InvalidMeasure(format!("`{xn}` must be strictly increasing at index {k}")));
            }
        }
        for (k, v) in d.iter().enumerate() {
            let v = finite(*v, &format!("{dn}[{k}]"))?;
            if v < 0.0 {
                return Err(Error::InvalidMeasure(format!("`{dn}[{k}]` is negative")));
            }
            if v == 0.0 && k > 0 && k + 1 < d.len() {
                return Err(Error::InvalidMeasure(format!(
                    "`{dn}[{k}]` vanishes inside the support; densities must be positive on the interior"
                )));
            }
        }
        let n = x.len();
        let cells: Vec<f64> = (0..n - 1).map(|k| 0.5 * (d[k] + d[k + 1]) * (x[k + 1] - x[k])).collect();
        let total: f64 = cells.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidMeasure(format!("`{dn}` has zero mass")));
        }
        let d: Vec<f64> = d.iter().map(|v| v / total).collect();
        let (prefix, suffix) = prefix_suffix(&cells.iter().map(|c| c / total).collect::<Vec<_>>());
        let support = (x[0], x[n - 1]);
        Ok(Self::wrap(
            Kind::Linear(Linear {
                x,
                d,
                prefix,
                suffix,
                grid,
            }),
            support,
            support,
        ))
    }

    /// Measure with density proportional to `f` on `[a, b]`; the CDF is tabulated
    /// by adaptive quadrature.
    pub fn from_density(f: DensityFn, a: f64, b: f64) -> Result<Self> {
        let (a, b) = (finite(a, "a")?, finite(b, "b")?);
        if !(a < b) {
            return Err(Error::InvalidMeasure(format!("density support needs a < b, got [{a}, {b}]")));
        }
        let x: Vec<f64> = (0..=TABLE_CELLS).map(|k| a + (b - a) * k as f64 / TABLE_CELLS as f64).collect();
        for (k, &v) in x.iter().enumerate() {
            let fv = f(v);
            if !fv.is_finite() || fv < 0.0 || (fv == 0.0 && k > 0 && k < TABLE_CELLS) {
                return Err(Error::InvalidMeasure(format!("density is not positive and finite at x = {v}")));
            }
        }
        let tol = CDF_ABS_TOL / TABLE_CELLS as f64;
        let cells: Vec<f64> = x.windows(2).map(|w| quad::integrate(&|t| f(t), w[0], w[1], tol)).collect();
        let norm: f64 = cells.iter().sum();
        if !(norm > 0.0) {
            return Err(Error::InvalidMeasure("density has zero mass".into()));
        }
        let (prefix, suffix) = prefix_suffix(&cells.iter().map(|c| c / norm).collect::<Vec<_>>());
        Ok(Self::wrap(
            Kind::Tabulated(Tabulated {
                f,
                x,
                prefix,
                suffix,
                norm,
            }),
            (a, b),
            (a, b),
        ))
    }

    pub(crate) fn pushforward_unchecked(base: &Measure1D, map: &MonotoneMap) -> Self {
        let s = base.support();
        let w = base.window();
        let img = |v: f64| if v.is_finite() { map.forward(v) } else { v };
        Self::wrap(
            Kind::Pushforward {
                base: base.clone(),
                map: map.clone(),
            },
            (img(s.0), img(s.1)),
            (map.forward(w.0), map.forward(w.1)),
        )
    }

    pub fn from_spec(spec: &MeasureSpec) -> Result<Self> {
        match spec {
            MeasureSpec::Uniform { a, b } => Self::uniform(*a, *b),
            MeasureSpec::Gaussian { mean, sd } => Self::gaussian(*mean, *sd),
            MeasureSpec::AffineImage { base, alpha, beta } => {
                Self::affine_image(&Self::from_spec(base)?, *alpha, *beta)
            }
            MeasureSpec::Piecewise { breaks, values } => Self::piecewise(breaks.clone(), values.clone()),
            MeasureSpec::Grid { x, density } => Self::grid(x.clone(), density.clone()),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: MeasureSpec = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_spec(&spec)
    }

    /// The JSON spec of an analytic or sampled measure; `None` for function-backed
    /// and pushforward measures.
    pub fn to_spec(&self) -> Option<MeasureSpec> {
        match &self.0.kind {
            Kind::Uniform { a, b } => Some(MeasureSpec::Uniform { a: *a, b: *b }),
            Kind::Gaussian { mean, sd } => Some(MeasureSpec::Gaussian { mean: *mean, sd: *sd }),
            Kind::Affine { base, alpha, beta } => Some(MeasureSpec::AffineImage {
                base: Box::new(base.to_spec()?),
                alpha: *alpha,
                beta: *beta,
            }),
            Kind::Linear(l) if l.grid => Some(MeasureSpec::Grid {
                x: l.x.clone(),
                density: l.d.clone(),
            }),
            Kind::Linear(l) => Some(MeasureSpec::Piecewise {
                breaks: l.x.clone(),
                values: l.d.clone(),
            }),
            _ => None,
        }
    }

    /// Closed support `[a, b]`; endpoints may be infinite.
    pub fn support(&self) -> (f64, f64) {
        self.0.support
    }

    /// Finite working interval (the support, cut at the tail levels when unbounded).
    pub fn window(&self) -> (f64, f64) {
        self.0.window
    }

    pub fn density(&self, x: f64) -> f64 {
        let (a, b) = self.0.support;
        if !(x >= a && x <= b) {
            return 0.0;
        }
        match &self.0.kind {
            Kind::Uniform { a, b } => 1.0 / (b - a),
            Kind::Gaussian { mean, sd } => {
                let z = (x - mean) / sd;
                (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
            }
            Kind::Affine { base, alpha, beta } => alpha * base.density(alpha * (x - beta)),
            Kind::Linear(l) => {
                let k = cell(&l.x, x);
                let t = (x - l.x[k]) / (l.x[k + 1] - l.x[k]);
                l.d[k] + t * (l.d[k + 1] - l.d[k])
            }
            Kind::Tabulated(t) => (t.f)(x) / t.norm,
            Kind::Pushforward { base, map } => {
                let y = map.inverse(x);
                let jac = map.derivative(y);
                base.density(y) / jac
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let (a, b) = self.0.support;
        if x <= a {
            return 0.0;
        }
        if x >= b {
            return 1.0;
        }
        match &self.0.kind {
            Kind::Uniform { a, b } => (x - a) / (b - a),
            Kind::Gaussian { mean, sd } => 0.5 * erfc(-(x - mean) / (sd * std::f64::consts::SQRT_2)),
            Kind::Affine { base, alpha, beta } => base.cdf(alpha * (x - beta)),
            Kind::Linear(l) => {
                let k = cell(&l.x, x);
                (l.prefix[k] + l.left_part(k, x - l.x[k])).min(1.0)
            }
            Kind::Tabulated(t) => {
                let k = cell(&t.x, x);
                let part = quad::integrate(&|s| (t.f)(s), t.x[k], x, CDF_ABS_TOL / TABLE_CELLS as f64);
                (t.prefix[k] + part / t.norm).min(1.0)
            }
            Kind::Pushforward { base, map } => base.cdf(map.inverse(x)),
        }
    }

    /// Survival function `1 - F(x)`, accurate in the upper tail.
    pub fn sf(&self, x: f64) -> f64 {
        let (a, b) = self.0.support;
        if x <= a {
            return 1.0;
        }
        if x >= b {
            return 0.0;
        }
        match &self.0.kind {
            Kind::Uniform { a, b } => (b - x) / (b - a),
            Kind::Gaussian { mean, sd } => 0.5 * erfc((x - mean) / (sd * std::f64::consts::SQRT_2)),
            Kind::Affine { base, alpha, beta } => base.sf(alpha * (x - beta)),
            Kind::Linear(l) => {
                let k = cell(&l.x, x);
                (l.suffix[k + 1] + l.right_part(k, l.x[k + 1] - x)).min(1.0)
            }
            Kind::Tabulated(t) => {
                let k = cell(&t.x, x);
                let part = quad::integrate(&|s| (t.f)(s), x, t.x[k + 1], CDF_ABS_TOL / TABLE_CELLS as f64);
                (t.suffix[k + 1] + part / t.norm).min(1.0)
            }
            Kind::Pushforward { base, map } => base.sf(map.inverse(x)),
        }
    }

    /// Quantile `F^{-1}(p)` for `p` in `[0, 1]`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("quantile level {p} is outside [0, 1]")));
        }
        Ok(self.q(p))
    }

    /// Upper quantile: the point `x` with `1 - F(x) = q`.
    pub fn quantile_upper(&self, q: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::Domain(format!("upper quantile level {q} is outside [0, 1]")));
        }
        Ok(self.qu(q))
    }

    /// Quantile with `p` clamped to `[0, 1]`; infinite ends map to the window.
    pub(crate) fn q(&self, p: f64) -> f64 {
        let ((sa, sb), (wa, wb)) = (self.0.support, self.0.window);
        if !(p > 0.0) {
            return if sa.is_finite() { sa } else { wa };
        }
        if p >= 1.0 {
            return if sb.is_finite() { sb } else { wb };
        }
        match &self.0.kind {
            Kind::Uniform { a, b } => a + p * (b - a),
            Kind::Gaussian { mean, sd } => {
                let x = mean - sd * std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
                self.polish(x, p, false)
            }
            Kind::Affine { base, alpha, beta } => beta + base.q(p) / alpha,
            Kind::Linear(l) => {
                let k = l.prefix.partition_point(|&c| c <= p).clamp(1, l.x.len() - 1) - 1;
                let r = (p - l.prefix[k]).max(0.0);
                let x = l.x[k] + l.solve_left(k, r);
                self.polish(x, p, false)
            }
            Kind::Tabulated(t) => {
                let k = t.prefix.partition_point(|&c| c <= p).clamp(1, t.x.len() - 1) - 1;
                self.bisect_polish(t.x[k], t.x[k + 1], p, false)
            }
            Kind::Pushforward { base, map } => map.forward(base.q(p)),
        }
    }

    pub(crate) fn qu(&self, q: f64) -> f64 {
        if !(q > 0.0) {
            return self.q(1.0);
        }
        if q >= 1.0 {
            return self.q(0.0);
        }
        match &self.0.kind {
            Kind::Uniform { a, b } => b - q * (b - a),
            Kind::Gaussian { mean, sd } => {
                let x = mean + sd * std::f64::consts::SQRT_2 * erfc_inv(2.0 * q);
                self.polish(x, q, true)
            }
            Kind::Affine { base, alpha, beta } => beta + base.qu(q) / alpha,
            Kind::Linear(l) => {
                let n = l.x.len();
                let k = (l.suffix.partition_point(|&c| c > q)).clamp(1, n - 1) - 1;
                let r = (q - l.suffix[k + 1]).max(0.0);
                let x = l.x[k + 1] - l.solve_right(k, r);
                self.polish(x, q, true)
            }
            Kind::Tabulated(t) => {
                let n = t.x.len();
                let k = (t.suffix.partition_point(|&c| c > q)).clamp(1, n - 1) - 1;
                self.bisect_polish(t.x[k], t.x[k + 1], q, true)
            }
            Kind::Pushforward { base, map } => map.forward(base.qu(q)),
        }
    }

    fn polish(&self, x: f64, level: f64, upper: bool) -> f64 {
        let d = self.density(x);
        if !(d > 0.0) || !d.is_finite() {
            return x;
        }
        let step = if upper {
            (level - self.sf(x)) / d
        } else {
            (self.cdf(x) - level) / d
        };
        let (a, b) = self.0.support;
        let y = x - step;
        if y.is_finite() && y >= a && y <= b {
            y
        } else {
            x
        }
    }

    fn bisect_polish(&self, mut lo: f64, mut hi: f64, level: f64, upper: bool) -> f64 {
        let below = |x: f64| {
            if upper {
                self.sf(x) > level
            } else {
                self.cdf(x) < level
            }
        };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= 1e-9 * (1.0 + lo.abs().max(hi.abs())) {
                break;
            }
            if below(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let x = 0.5 * (lo + hi);
        self.polish(x, level, upper)
    }

    /// Points where the density may fail to be smooth, inside the window.
    pub fn breakpoints(&self) -> Vec<f64> {
        let w = self.0.window;
        match &self.0.kind {
            Kind::Linear(l) => l.x.clone(),
            Kind::Affine { base, alpha, beta } => base.breakpoints().iter().map(|x| beta + x / alpha).collect(),
            Kind::Pushforward { base, map } => base.breakpoints().iter().map(|&x| map.forward(x)).collect(),
            Kind::Gaussian { mean, .. } => vec![w.0, *mean, w.1],
            _ => vec![w.0, w.1],
        }
    }

    /// Sampled lower and upper density bounds on `[lo, hi]`.
    pub fn density_bounds(&self, lo: f64, hi: f64) -> (f64, f64) {
        let mut pts: Vec<f64> = (0..=1024).map(|k| lo + (hi - lo) * k as f64 / 1024.0).collect();
        pts.extend(self.breakpoints().into_iter().filter(|x| *x >= lo && *x <= hi));
        pts.iter().map(|&x| self.density(x)).fold((f64::INFINITY, 0.0f64), |(m, n), d| (m.min(d), n.max(d)))
    }

    /// Total mass of the density over the window, by quadrature.
    pub fn mass(&self) -> f64 {
        let mut br = self.breakpoints();
        br.push(self.0.window.0);
        br.push(self.0.window.1);
        quad::integrate_pieces(&|x| self.density(x), &sorted_unique(br), CDF_ABS_TOL)
    }
}

impl Linear {
    fn left_part(&self, k: usize, s: f64) -> f64 {
        let h = self.x[k + 1] - self.x[k];
        s * (self.d[k] + 0.5 * (self.d[k + 1] - self.d[k]) * s / h)
    }

    fn right_part(&self, k: usize, s: f64) -> f64 {
        let h = self.x[k + 1] - self.x[k];
        s * (self.d[k + 1] - 0.5 * (self.d[k + 1] - self.d[k]) * s / h)
    }

    fn solve_left(&self, k: usize, r: f64) -> f64 {
        let h = self.x[k + 1] - self.x[k];
        let slope = (self.d[k + 1] - self.d[k]) / h;
        let disc = (self.d[k] * self.d[k] + 2.0 * slope * r).max(0.0);
        let den = self.d[k] + disc.sqrt();
        if den > 0.0 {
            (2.0 * r / den).clamp(0.0, h)
        } else {
            0.0
        }
    }

    fn solve_right(&self, k: usize, r: f64) -> f64 {
        let h = self.x[k + 1] - self.x[k];
        let slope = (self.d[k + 1] - self.d[k]) / h;
        let disc = (self.d[k + 1] * self.d[k + 1] - 2.0 * slope * r).max(0.0);
        let den = self.d[k + 1] + disc.sqrt();
        if den > 0.0 {
            (2.0 * r / den).clamp(0.0, h)
        } else {
            0.0
        }
    }
}

fn cell(x: &[f64], t: f64) -> usize {
    x.partition_point(|&v| v <= t).clamp(1, x.len() - 1) - 1
}

fn prefix_suffix(cells: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = cells.len();
    let mut prefix = vec![0.0; n + 1];
    for k in 0..n {
        prefix[k + 1] = prefix[k] + cells[k];
    }
    let mut suffix = vec![0.0; n + 1];
    for k in (0..n).rev() {
        suffix[k] = suffix[k + 1] + cells[k];
    }
    (prefix, suffix)
}

pub(crate) fn sorted_unique(mut v: Vec<f64>) -> Vec<f64> {
    v.retain(|x| x.is_finite());
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup();
    v
}

fn joint_breaks(m0: &Measure1D, m1: &Measure1D) -> Vec<f64> {
    let (w0, w1) = (m0.window(), m1.window());
    let lo = w0.0.min(w1.0);
    let hi = w0.1.max(w1.1);
    let mut br = m0.breakpoints();
    br.extend(m1.breakpoints());
    br.extend([lo, hi, w0.0, w0.1, w1.0, w1.1]);
    br.retain(|x| *x >= lo && *x <= hi);
    sorted_unique(br)
}

/// Wasserstein-1 distance through `\int |F_0 - F_1|`.
pub fn wasserstein1(m0: &Measure1D, m1: &Measure1D) -> f64 {
    let br = joint_breaks(m0, m1);
    quad::integrate_pieces(&|x| (m0.cdf(x) - m1.cdf(x)).abs(), &br, CDF_ABS_TOL)
}

/// L1 distance between the densities.
pub fn l1_distance(m0: &Measure1D, m1: &Measure1D) -> f64 {
    let br = joint_breaks(m0, m1);
    quad::integrate_pieces(&|x| (m0.density(x) - m1.density(x)).abs(), &br, CDF_ABS_TOL)
}

/// Image measure `T # m`; the map must be strictly increasing on the support of `m`.
pub fn pushforward_by_map(m: &Measure1D, map: &MonotoneMap) -> Result<Measure1D> {
    let (a, b) = m.window();
    for k in 0..=1024 {
        let x = a + (b - a) * k as f64 / 1024.0;
        let d = map.derivative(x);
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::InvalidMap(format!("derivative {d} at x = {x} is not positive")));
        }
    }
    Ok(Measure1D::pushforward_unchecked(m, map))
}
