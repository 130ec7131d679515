//! Autonomous velocity fields solving `v(T(x)) = T'(x) v(x)`.
//!
//! A field is stored per moving interval as a seed on `[alpha_0, alpha_1]` plus the
//! orbit of `alpha_0`. Values elsewhere are pulled back to the seed interval along the
//! orbit and multiplied by the product of `T'` along the way.

mod approx;
mod build;
pub mod seed;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::map::{FixedComponent, FixedPointPartition, Location, MonotoneMap, MovingInterval, OrbitGrid, StopReason, StopRule};
use crate::quad;

pub use approx::{approximate_lipschitz, lipschitz_certificate, ApproxOutcome, LipschitzCertificate};
pub use build::{build_general, build_no_fixed_point, build_one_fixed_point, build_two_fixed_points, time_normalize};
pub use seed::{SeedKind, SeedSpec, MAX_HERMITE_ORDER};

use seed::SeedFn;

pub const TOL_JULIA: f64 = 1e-8;
pub const TOL_TIME: f64 = 1e-6;
/// `|T'(p) - 1|` at or below this marks a fixed point `p` as indeterminate.
pub const TOL_INDETERMINATE: f64 = 1e-6;
/// Distance to the fixed set (relative to the domain width) below which residual
/// checks are skipped: `T(x) - x` is dominated by rounding there.
pub const RESIDUAL_EXCLUSION_REL: f64 = 1e-6;

/// Quadrature tolerance for travel-time integrals, relative to the period.
pub const TIME_QUAD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildOptions {
    pub tol_julia: f64,
    pub tol_time: f64,
    pub tol_indeterminate: f64,
    /// Fixed-point tolerance; defaults to `1e-10 * width`.
    pub tol_fp: Option<f64>,
    /// Orbit truncation; defaults to [`StopRule::for_width`].
    pub stop: Option<StopRule>,
    /// Scale each piece so that `int_x^{T(x)} dxi / v = 1`.
    pub normalize: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            tol_julia: TOL_JULIA,
            tol_time: TOL_TIME,
            tol_indeterminate: TOL_INDETERMINATE,
            tol_fp: None,
            stop: None,
            normalize: true,
        }
    }
}

impl BuildOptions {
    pub fn tol_fp_for(&self, map: &MonotoneMap) -> f64 {
        self.tol_fp.unwrap_or(crate::map::TOL_FP_REL * map.width())
    }

    pub fn stop_for(&self, map: &MonotoneMap) -> StopRule {
        self.stop.unwrap_or_else(|| StopRule::for_width(map.width()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ZoneKind {
    /// Closed by the linear asymptotics of a fixed point with `T' != 1`.
    Asymptotic,
    /// Indeterminate fixed point or step cap: the closure is not backed by a decay estimate.
    Unverified,
}

/// Region between the last stored anchor and the fixed point it accumulates at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Zone {
    pub lo: f64,
    pub hi: f64,
    pub fixed_point: f64,
    pub kind: ZoneKind,
}

impl Zone {
    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    IndeterminateFixedPoint { x: f64, derivative: f64 },
    TruncationZone { lo: f64, hi: f64, fixed_point: f64, verified: bool },
    UnresolvedCluster { lo: f64, hi: f64 },
    OrbitStepCap { fixed_point: f64, steps: usize },
}

/// Velocity on one moving interval.
#[derive(Debug, Clone)]
pub struct Piece {
    pub interval: MovingInterval,
    pub grid: OrbitGrid,
    pub seed_spec: SeedSpec,
    pub time_scale: f64,
    pub forward_zone: Option<Zone>,
    pub backward_zone: Option<Zone>,
    seed: SeedFn,
    map: MonotoneMap,
    fwd_v: Vec<f64>,
    bwd_v: Vec<f64>,
}

impl Piece {
    pub(crate) fn new(
        map: &MonotoneMap,
        interval: MovingInterval,
        grid: OrbitGrid,
        seed_spec: SeedSpec,
        seed: SeedFn,
        normalize: bool,
        tol_indeterminate: f64,
    ) -> Self {
        let time_scale = if normalize { seed.travel_time() } else { 1.0 };
        let mut fwd_v = Vec::with_capacity(grid.forward.len());
        fwd_v.push(time_scale * seed.eval(grid.forward[0]));
        for i in 1..grid.forward.len() {
            let prev = fwd_v[i - 1];
            fwd_v.push(prev * map.derivative(grid.forward[i - 1]));
        }
        let mut bwd_v = Vec::with_capacity(grid.backward.len());
        bwd_v.push(fwd_v[0]);
        for j in 1..grid.backward.len() {
            let prev = bwd_v[j - 1];
            bwd_v.push(prev / map.derivative(grid.backward[j]));
        }
        let dir = interval.direction;
        let (down, up) = if dir > 0 { (interval.hi, interval.lo) } else { (interval.lo, interval.hi) };
        let zone = |stop: StopReason, last: f64, end: f64| -> Option<Zone> {
            if stop == StopReason::Boundary {
                return None;
            }
            let good = (map.derivative(end) - 1.0).abs() > tol_indeterminate;
            let kind = if good && stop == StopReason::Converged {
                ZoneKind::Asymptotic
            } else {
                ZoneKind::Unverified
            };
            Some(Zone {
                lo: last.min(end),
                hi: last.max(end),
                fixed_point: end,
                kind,
            })
        };
        let forward_zone = zone(grid.forward_stop, *grid.forward.last().unwrap(), down);
        let backward_zone = zone(grid.backward_stop, *grid.backward.last().unwrap(), up);
        Piece {
            interval,
            grid,
            seed_spec,
            time_scale,
            forward_zone,
            backward_zone,
            seed,
            map: map.clone(),
            fwd_v,
            bwd_v,
        }
    }

    pub(crate) fn rescaled(&self, time_scale: f64) -> Piece {
        let r = time_scale / self.time_scale;
        let mut p = self.clone();
        p.time_scale = time_scale;
        p.fwd_v.iter_mut().for_each(|v| *v *= r);
        p.bwd_v.iter_mut().for_each(|v| *v *= r);
        p
    }

    /// `(alpha_0, alpha_1)`.
    pub fn seed_interval(&self) -> (f64, f64) {
        self.grid.seed_interval()
    }

    /// Raw seed value (before the time scale) at a point of the seed interval.
    pub fn seed_value(&self, x: f64) -> f64 {
        self.seed.eval(x)
    }

    /// `int_{alpha_0}^{alpha_1} dx / v`; 1 for normalized fields.
    pub fn period(&self) -> f64 {
        self.seed.travel_time() / self.time_scale
    }

    /// `v(alpha_i)` for a stored anchor index.
    pub fn anchor_velocity(&self, i: i64) -> Option<f64> {
        if i >= 0 {
            self.fwd_v.get(i as usize).copied()
        } else {
            self.bwd_v.get((-i) as usize).copied()
        }
    }

    pub fn zones(&self) -> impl Iterator<Item = &Zone> {
        self.forward_zone.iter().chain(self.backward_zone.iter())
    }

    pub fn in_zone(&self, y: f64) -> bool {
        matches!(self.grid.locate(y), Location::ForwardZone | Location::BackwardZone)
    }

    /// Orbit index of `y` and its preimage in the seed interval, with `prod = dy/dx`.
    pub fn pullback(&self, y: f64, n: i64) -> (f64, f64) {
        let mut x = y;
        let mut prod = 1.0;
        if n >= 0 {
            for _ in 0..n {
                let xp = self.map.inverse(x);
                prod *= self.map.derivative(xp);
                x = xp;
            }
        } else {
            for _ in 0..(-n) {
                prod /= self.map.derivative(x);
                x = self.map.forward(x);
            }
        }
        (self.seed.clamp(x), prod)
    }

    fn zone_anchor(&self, forward: bool) -> (f64, f64, f64) {
        if forward {
            let k = self.grid.forward.len() - 1;
            (self.grid.forward[k], self.fwd_v[k], self.forward_zone.unwrap().fixed_point)
        } else {
            let j = self.grid.backward.len() - 1;
            (self.grid.backward[j], self.bwd_v[j], self.backward_zone.unwrap().fixed_point)
        }
    }

    /// `v(y)` for `y` in the moving interval.
    pub fn velocity(&self, y: f64) -> f64 {
        match self.grid.locate(y) {
            Location::Index(n) => {
                let (x, prod) = self.pullback(y, n);
                self.time_scale * self.seed.eval(x) * prod
            }
            Location::ForwardZone => {
                let (a, va, e) = self.zone_anchor(true);
                va * (y - e) / (a - e)
            }
            Location::BackwardZone => {
                let (a, va, e) = self.zone_anchor(false);
                va * (y - e) / (a - e)
            }
        }
    }

    /// Abel primitive: `F' = 1/v`, `F(alpha_0) = 0`, `F(T(x)) = F(x) + period`.
    pub fn primitive(&self, y: f64) -> f64 {
        let p = self.period();
        match self.grid.locate(y) {
            Location::Index(n) => {
                let (x, _) = self.pullback(y, n);
                n as f64 * p + self.seed.integral_to(x) / self.time_scale
            }
            Location::ForwardZone => {
                let k = (self.grid.forward.len() - 1) as f64;
                let (a, va, e) = self.zone_anchor(true);
                k * p + (a - e) / va * ((y - e) / (a - e)).ln()
            }
            Location::BackwardZone => {
                let j = (self.grid.backward.len() - 1) as f64;
                let (a, va, e) = self.zone_anchor(false);
                -j * p + (a - e) / va * ((y - e) / (a - e)).ln()
            }
        }
    }

    /// Inverse of [`Self::primitive`].
    pub fn point_at(&self, s: f64) -> Result<f64> {
        let p = self.period();
        let (jmin, kmax) = self.grid.index_range();
        if s > kmax as f64 * p && self.forward_zone.is_some() {
            let (a, va, e) = self.zone_anchor(true);
            return Ok(e + (a - e) * ((s - kmax as f64 * p) * va / (a - e)).exp());
        }
        if s < jmin as f64 * p && self.backward_zone.is_some() {
            let (a, va, e) = self.zone_anchor(false);
            return Ok(e + (a - e) * ((s - jmin as f64 * p) * va / (a - e)).exp());
        }
        let n = (s / p).floor();
        let w = (s - n * p) * self.time_scale;
        let mut x = self.seed.point_at(w);
        let n = n as i64;
        let slack = 1e-12 * self.map.width();
        if n >= 0 {
            let (a, b) = self.map.source();
            for _ in 0..n {
                if x < a - slack || x > b + slack {
                    return Err(Error::Domain(format!("the flow leaves the region where T is defined at {x}")));
                }
                x = self.map.forward(x);
            }
        } else {
            let (a, b) = self.map.target();
            for _ in 0..(-n) {
                if x < a - slack || x > b + slack {
                    return Err(Error::Domain(format!(
                        "the flow leaves the region where T^-1 is defined at {x}"
                    )));
                }
                x = self.map.inverse(x);
            }
        }
        Ok(x)
    }
}

/// A velocity field over `Conv(supp m0 U supp m1)`, zero on the fixed set.
#[derive(Debug, Clone)]
pub struct VelocityField1D {
    map: MonotoneMap,
    partition: FixedPointPartition,
    pieces: Vec<Piece>,
    warnings: Vec<Warning>,
    options: BuildOptions,
}

/// Serializable summary of a field.
#[derive(Debug, Clone, Serialize)]
pub struct FieldDescriptor {
    pub schema_version: String,
    pub domain: (f64, f64),
    pub fixed_set: Vec<FixedComponent>,
    pub pieces: Vec<PieceDescriptor>,
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PieceDescriptor {
    pub interval: MovingInterval,
    pub seed: SeedSpec,
    pub seed_interval: (f64, f64),
    pub time_scale: f64,
    pub forward_anchors: usize,
    pub backward_anchors: usize,
    pub forward_stop: StopReason,
    pub backward_stop: StopReason,
    /// Leading anchors `alpha_{-m}, ..., alpha_m` (at most 16 per side).
    pub anchors: Vec<f64>,
    pub zones: Vec<Zone>,
}

impl VelocityField1D {
    pub(crate) fn assemble(map: &MonotoneMap, partition: FixedPointPartition, pieces: Vec<Piece>, options: BuildOptions) -> Self {
        let mut warnings = Vec::new();
        for c in &partition.fixed_set {
            if c.unresolved {
                warnings.push(Warning::UnresolvedCluster { lo: c.lo, hi: c.hi });
            }
        }
        let mut flagged: Vec<f64> = Vec::new();
        for iv in &partition.moving_intervals {
            for (e, fixed) in [(iv.lo, iv.lo_fixed), (iv.hi, iv.hi_fixed)] {
                if fixed && !flagged.contains(&e) && !partition.fixed_set.iter().any(|c| c.unresolved && e >= c.lo && e <= c.hi) {
                    let d = map.derivative(e);
                    if (d - 1.0).abs() <= options.tol_indeterminate {
                        warnings.push(Warning::IndeterminateFixedPoint { x: e, derivative: d });
                        flagged.push(e);
                    }
                }
            }
        }
        for p in &pieces {
            for (z, stop, len) in [
                (&p.forward_zone, p.grid.forward_stop, p.grid.forward.len()),
                (&p.backward_zone, p.grid.backward_stop, p.grid.backward.len()),
            ] {
                if let Some(z) = z {
                    warnings.push(Warning::TruncationZone {
                        lo: z.lo,
                        hi: z.hi,
                        fixed_point: z.fixed_point,
                        verified: z.kind == ZoneKind::Asymptotic,
                    });
                    if stop == StopReason::MaxSteps {
                        warnings.push(Warning::OrbitStepCap {
                            fixed_point: z.fixed_point,
                            steps: len - 1,
                        });
                    }
                }
            }
        }
        VelocityField1D {
            map: map.clone(),
            partition,
            pieces,
            warnings,
            options,
        }
    }

    pub(crate) fn with_pieces(&self, pieces: Vec<Piece>) -> Self {
        VelocityField1D {
            pieces,
            ..self.clone()
        }
    }

    pub fn map(&self) -> &MonotoneMap {
        &self.map
    }

    pub fn partition(&self) -> &FixedPointPartition {
        &self.partition
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn warnings(&self) -> &[Warning] {
        &self.warnings
    }

    pub fn options(&self) -> &BuildOptions {
        &self.options
    }

    pub fn domain(&self) -> (f64, f64) {
        self.partition.domain
    }

    /// The fixed set, where `v = 0`.
    pub fn fixed_zeros(&self) -> &[FixedComponent] {
        &self.partition.fixed_set
    }

    pub fn zones(&self) -> impl Iterator<Item = &Zone> {
        self.pieces.iter().flat_map(|p| p.zones())
    }

    pub fn has_indeterminate_fixed_point(&self) -> bool {
        self.warnings.iter().any(|w| matches!(w, Warning::IndeterminateFixedPoint { .. }))
    }

    /// Clamp points within rounding of the domain; reject the rest.
    pub fn check_domain(&self, y: f64) -> Result<f64> {
        let (a, b) = self.domain();
        let slack = 1e-12 * (b - a);
        if !(y >= a - slack && y <= b + slack) {
            return Err(Error::Domain(format!("x = {y} is outside the field domain [{a}, {b}]")));
        }
        Ok(y.clamp(a, b))
    }

    /// Index of the piece whose moving interval contains `y`.
    pub fn piece_index(&self, y: f64) -> Option<usize> {
        let i = self.pieces.partition_point(|p| p.interval.hi < y);
        (i < self.pieces.len() && self.pieces[i].interval.contains(y)).then_some(i)
    }

    pub fn piece_at(&self, y: f64) -> Option<&Piece> {
        self.piece_index(y).map(|i| &self.pieces[i])
    }

    /// `v(y)`; zero on the fixed set.
    pub fn eval(&self, y: f64) -> Result<f64> {
        let y = self.check_domain(y)?;
        Ok(self.piece_at(y).map_or(0.0, |p| p.velocity(y)))
    }

    /// Samples `(x, v(x))` on `n` equispaced points of the domain.
    pub fn dump(&self, n: usize) -> Vec<(f64, f64)> {
        let (a, b) = self.domain();
        let n = n.max(2);
        (0..n)
            .map(|k| {
                let x = if k + 1 == n { b } else { a + (b - a) * k as f64 / (n - 1) as f64 };
                (x, self.eval(x).unwrap_or(0.0))
            })
            .collect()
    }

    /// Distance from `x` to the nearest fixed component.
    pub fn distance_to_fixed_set(&self, x: f64) -> f64 {
        self.partition
            .fixed_set
            .iter()
            .map(|c| if x < c.lo { c.lo - x } else if x > c.hi { x - c.hi } else { 0.0 })
            .fold(f64::INFINITY, f64::min)
    }

    /// Whether residual checks apply at `x`: inside a moving interval, outside zones,
    /// and not within rounding distance of the fixed set.
    pub fn is_checkable(&self, x: f64) -> bool {
        let w = self.map.width();
        match self.piece_at(x) {
            Some(p) => !p.in_zone(x) && self.distance_to_fixed_set(x) > RESIDUAL_EXCLUSION_REL * w,
            None => false,
        }
    }

    /// Sample points `x` in the source with `x` and `T(x)` both checkable, `per_piece` per piece.
    pub fn residual_samples(&self, per_piece: usize) -> Vec<f64> {
        let (sa, sb) = self.map.source();
        let mut out = Vec::new();
        for p in &self.pieces {
            let lo = p.interval.lo.max(sa);
            let hi = p.interval.hi.min(sb);
            if !(hi > lo) {
                continue;
            }
            for k in 0..per_piece {
                let x = lo + (hi - lo) * (k as f64 + 0.5) / per_piece as f64;
                if self.is_checkable(x) && self.is_checkable(self.map.forward(x)) {
                    out.push(x);
                }
            }
        }
        out
    }

    /// Largest relative residual `|v(Tx) - T'(x)v(x)| / max(|v(Tx)|, |T'(x) v(x)|)` over `xs`.
    pub fn julia_residual(&self, xs: &[f64]) -> f64 {
        xs.iter()
            .map(|&x| {
                let lhs = self.eval(self.map.forward(x)).unwrap_or(f64::NAN);
                let rhs = self.map.derivative(x) * self.eval(x).unwrap_or(f64::NAN);
                let scale = lhs.abs().max(rhs.abs());
                if scale == 0.0 {
                    0.0
                } else {
                    (lhs - rhs).abs() / scale
                }
            })
            .fold(0.0, f64::max)
    }

    /// Largest `|int_x^{T(x)} dxi / v - 1|` over `xs`, by adaptive quadrature of `1/v`.
    pub fn time_residual(&self, xs: &[f64]) -> f64 {
        xs.iter()
            .map(|&x| {
                let y = self.map.forward(x);
                let Some(p) = self.piece_at(x) else { return 0.0 };
                let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
                let mut breaks = vec![lo];
                breaks.extend(
                    p.grid
                        .forward
                        .iter()
                        .chain(p.grid.backward.iter())
                        .copied()
                        .filter(|&a| a > lo && a < hi),
                );
                breaks.push(hi);
                breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let integral = quad::integrate_pieces(&|t| 1.0 / p.velocity(t), &breaks, TIME_QUAD_TOL * p.period());
                let signed = if x <= y { integral } else { -integral };
                (signed - p.period()).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn descriptor(&self) -> FieldDescriptor {
        FieldDescriptor {
            schema_version: "1".into(),
            domain: self.domain(),
            fixed_set: self.partition.fixed_set.clone(),
            pieces: self
                .pieces
                .iter()
                .map(|p| {
                    let mut anchors: Vec<f64> = p.grid.backward.iter().take(17).skip(1).rev().copied().collect();
                    anchors.extend(p.grid.forward.iter().take(17));
                    PieceDescriptor {
                        interval: p.interval,
                        seed: p.seed_spec.clone(),
                        seed_interval: p.seed_interval(),
                        time_scale: p.time_scale,
                        forward_anchors: p.grid.forward.len(),
                        backward_anchors: p.grid.backward.len(),
                        forward_stop: p.grid.forward_stop,
                        backward_stop: p.grid.backward_stop,
                        anchors,
                        zones: p.zones().copied().collect(),
                    }
                })
                .collect(),
            warnings: self.warnings.clone(),
        }
    }
}
