//! Monotone transport maps, their fixed-point partition and orbit grids.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::Measure1D;

pub type Func = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Default number of samples for fixed-point detection.
pub const DETECT_GRID: usize = 1 << 14;
/// Default relative tolerance for `|T(x) - x|`.
pub const TOL_FP_REL: f64 = 1e-10;
/// Default relative orbit step below which an orbit is truncated.
pub const DELTA_ORBIT_REL: f64 = 1e-12;
/// Default cap on orbit length per side.
pub const ORBIT_MAX_STEPS: usize = 1_000_000;

/// Nondecreasing map between two intervals, with derivative and inverse.
#[derive(Clone)]
pub struct MonotoneMap(Arc<MapInner>);

struct MapInner {
    repr: Repr,
    source: (f64, f64),
    target: (f64, f64),
}

enum Repr {
    Measures { m0: Measure1D, m1: Measure1D },
    Explicit {
        forward: Func,
        derivative: Func,
        inverse: Option<Func>,
    },
}

impl fmt::Debug for MonotoneMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.0.repr {
            Repr::Measures { .. } => "measures",
            Repr::Explicit { .. } => "explicit",
        };
        write!(f, "MonotoneMap({kind}, {:?} -> {:?})", self.0.source, self.0.target)
    }
}

/// Monotone rearrangement `quantile(m1) . cdf(m0)`.
pub fn compute_monotone_map(m0: &Measure1D, m1: &Measure1D) -> MonotoneMap {
    MonotoneMap::from_measures(m0, m1)
}

/// `T'(x)`, with a domain error outside the source support.
pub fn map_derivative(map: &MonotoneMap, x: f64) -> Result<f64> {
    let (a, b) = map.source();
    if !(x >= a && x <= b) {
        return Err(Error::Domain(format!("x = {x} is outside the source support [{a}, {b}]")));
    }
    Ok(map.derivative(x))
}

impl MonotoneMap {
    pub fn from_measures(m0: &Measure1D, m1: &Measure1D) -> Self {
        MonotoneMap(Arc::new(MapInner {
            repr: Repr::Measures {
                m0: m0.clone(),
                m1: m1.clone(),
            },
            source: m0.window(),
            target: m1.window(),
        }))
    }

    /// Map given by closures on `source`; the inverse is solved numerically when absent.
    pub fn explicit(source: (f64, f64), forward: Func, derivative: Func, inverse: Option<Func>) -> Result<Self> {
        let (a, b) = source;
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidMap(format!("source interval [{a}, {b}] is not a finite interval")));
        }
        let target = (forward(a), forward(b));
        let mut prev = target.0;
        for k in 1..=1024 {
            let x = a + (b - a) * k as f64 / 1024.0;
            let y = forward(x);
            if !(y >= prev) || !y.is_finite() {
                return Err(Error::InvalidMap(format!("map is not nondecreasing near x = {x}")));
            }
            prev = y;
        }
        Ok(MonotoneMap(Arc::new(MapInner {
            repr: Repr::Explicit {
                forward,
                derivative,
                inverse,
            },
            source,
            target,
        })))
    }

    pub fn identity(a: f64, b: f64) -> Result<Self> {
        Self::affine(1.0, 0.0, (a, b))
    }

    /// `T(x) = slope * x + offset` on `source`.
    pub fn affine(slope: f64, offset: f64, source: (f64, f64)) -> Result<Self> {
        if !(slope > 0.0) {
            return Err(Error::InvalidMap(format!("affine map needs positive slope, got {slope}")));
        }
        Self::explicit(
            source,
            Arc::new(move |x| slope * x + offset),
            Arc::new(move |_| slope),
            Some(Arc::new(move |y| (y - offset) / slope)),
        )
    }

    /// Source interval (the working window of `m0`).
    pub fn source(&self) -> (f64, f64) {
        self.0.source
    }

    /// Target interval `T(source)`.
    pub fn target(&self) -> (f64, f64) {
        self.0.target
    }

    /// Convex hull of source and target.
    pub fn domain(&self) -> (f64, f64) {
        let (s, t) = (self.0.source, self.0.target);
        (s.0.min(t.0), s.1.max(t.1))
    }

    pub fn width(&self) -> f64 {
        let d = self.domain();
        d.1 - d.0
    }

    pub fn source_measure(&self) -> Option<&Measure1D> {
        match &self.0.repr {
            Repr::Measures { m0, .. } => Some(m0),
            _ => None,
        }
    }

    pub fn target_measure(&self) -> Option<&Measure1D> {
        match &self.0.repr {
            Repr::Measures { m1, .. } => Some(m1),
            _ => None,
        }
    }

    /// `T(x)`; arguments outside the source are clamped to it.
    pub fn forward(&self, x: f64) -> f64 {
        let (a, b) = self.0.source;
        let x = x.clamp(a, b);
        match &self.0.repr {
            Repr::Measures { m0, m1 } => {
                let p = m0.cdf(x);
                if p <= 0.5 {
                    m1.q(p)
                } else {
                    m1.qu(m0.sf(x))
                }
            }
            Repr::Explicit { forward, .. } => forward(x),
        }
    }

    /// `T^{-1}(y)`; arguments outside the target are clamped to it.
    pub fn inverse(&self, y: f64) -> f64 {
        let (c, d) = self.0.target;
        let y = y.clamp(c, d);
        match &self.0.repr {
            Repr::Measures { m0, m1 } => {
                let p = m1.cdf(y);
                if p <= 0.5 {
                    m0.q(p)
                } else {
                    m0.qu(m1.sf(y))
                }
            }
            Repr::Explicit { inverse: Some(inv), .. } => inv(y),
            Repr::Explicit { forward, derivative, .. } => solve_increasing(&**forward, &**derivative, y, self.0.source),
        }
    }

    /// `T'(x) = m0(x) / m1(T(x))`, or the supplied derivative for explicit maps.
    pub fn derivative(&self, x: f64) -> f64 {
        let (a, b) = self.0.source;
        let x = x.clamp(a, b);
        match &self.0.repr {
            Repr::Measures { m0, m1 } => {
                let num = m0.density(x);
                let den = m1.density(self.forward(x));
                let r = num / den;
                if den > 0.0 && r.is_finite() && r > 0.0 {
                    r
                } else {
                    self.difference_quotient(x)
                }
            }
            Repr::Explicit { derivative, .. } => derivative(x),
        }
    }

    fn difference_quotient(&self, x: f64) -> f64 {
        let (a, b) = self.0.source;
        let h = 1e-7 * (b - a);
        if x - h < a {
            (-3.0 * self.forward(x) + 4.0 * self.forward(x + h) - self.forward(x + 2.0 * h)) / (2.0 * h)
        } else if x + h > b {
            (3.0 * self.forward(x) - 4.0 * self.forward(x - h) + self.forward(x - 2.0 * h)) / (2.0 * h)
        } else {
            (self.forward(x + h) - self.forward(x - h)) / (2.0 * h)
        }
    }

    /// Derivatives `T^{(1)}, ..., T^{(order+1)}` at `x`, from a local polynomial fit
    /// of `T'` (one-sided near the ends of the source).
    pub fn derivative_jet(&self, x: f64, order: usize, scale: f64) -> Vec<f64> {
        let mut out = vec![self.derivative(x)];
        if order == 0 {
            return out;
        }
        let (a, b) = self.0.source;
        let h = (scale * 2e-3).min(0.25 * (b - a));
        let (lo, hi) = if x - h < a {
            (x, x + 2.0 * h)
        } else if x + h > b {
            (x - 2.0 * h, x)
        } else {
            (x - h, x + h)
        };
        let m = order + 9;
        let nodes: Vec<f64> = (0..m)
            .map(|k| {
                let c = (std::f64::consts::PI * (k as f64 + 0.5) / m as f64).cos();
                0.5 * (lo + hi) + 0.5 * (hi - lo) * c
            })
            .collect();
        let vals: Vec<f64> = nodes.iter().map(|&t| self.derivative(t)).collect();
        let taylor = newton_taylor(&nodes, &vals, x);
        let mut fact = 1.0;
        for j in 1..=order {
            fact *= j as f64;
            out.push(taylor[j] * fact);
        }
        out
    }
}

/// Taylor coefficients at `x0` of the interpolating polynomial through `(t, v)`.
fn newton_taylor(t: &[f64], v: &[f64], x0: f64) -> Vec<f64> {
    let n = t.len();
    let mut c = v.to_vec();
    for j in 1..n {
        for i in (j..n).rev() {
            c[i] = (c[i] - c[i - 1]) / (t[i] - t[i - j]);
        }
    }
    // Horner expansion of the Newton form around x0.
    let mut poly = vec![0.0; n];
    for i in (0..n).rev() {
        // poly <- poly * (x - t_i) + c_i, in powers of (x - x0)
        let shift = x0 - t[i];
        let mut next = vec![0.0; n];
        for k in 0..n {
            if poly[k] == 0.0 {
                continue;
            }
            next[k] += poly[k] * shift;
            if k + 1 < n {
                next[k + 1] += poly[k];
            }
        }
        next[0] += c[i];
        poly = next;
    }
    poly
}

/// Safeguarded Newton for `f(x) = y` with `f` nondecreasing on `[a, b]`.
pub(crate) fn solve_increasing(f: &dyn Fn(f64) -> f64, df: &dyn Fn(f64) -> f64, y: f64, (a, b): (f64, f64)) -> f64 {
    let (fa, fb) = (f(a), f(b));
    if y <= fa {
        return a;
    }
    if y >= fb {
        return b;
    }
    let (mut lo, mut hi) = (a, b);
    let mut x = a + (b - a) * (y - fa) / (fb - fa);
    for _ in 0..200 {
        let r = f(x) - y;
        if r == 0.0 {
            return x;
        }
        if r < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = df(x);
        let mut nx = x - r / d;
        if !(nx > lo && nx < hi) || !d.is_finite() || d <= 0.0 {
            nx = 0.5 * (lo + hi);
        }
        if (nx - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) || hi - lo <= f64::EPSILON * x.abs() {
            return nx;
        }
        x = nx;
    }
    x
}

/// A maximal closed interval (possibly a point) of fixed points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedComponent {
    pub lo: f64,
    pub hi: f64,
    /// Set when the sampling grid could not separate individual fixed points here.
    pub unresolved: bool,
}

/// Open interval between consecutive fixed components (or the ends of the domain).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MovingInterval {
    pub lo: f64,
    pub hi: f64,
    /// +1 if `T(x) > x` on the interval, -1 otherwise.
    pub direction: i8,
    pub lo_fixed: bool,
    pub hi_fixed: bool,
}

impl MovingInterval {
    pub fn contains(&self, x: f64) -> bool {
        let lo_ok = if self.lo_fixed { x > self.lo } else { x >= self.lo };
        let hi_ok = if self.hi_fixed { x < self.hi } else { x <= self.hi };
        lo_ok && hi_ok
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FixedPointPartition {
    pub domain: (f64, f64),
    pub fixed_set: Vec<FixedComponent>,
    pub boundary: Vec<f64>,
    pub moving_intervals: Vec<MovingInterval>,
    pub tol_fp: f64,
}

impl FixedPointPartition {
    /// Partition with the given fixed components; directions are read off `T`.
    pub fn from_components(map: &MonotoneMap, mut fixed: Vec<FixedComponent>, tol_fp: f64) -> Self {
        fixed.sort_by(|a, b| a.lo.partial_cmp(&b.lo).unwrap());
        let domain = map.domain();
        let mut merged: Vec<FixedComponent> = Vec::new();
        for c in fixed {
            match merged.last_mut() {
                Some(last) if c.lo <= last.hi => {
                    last.hi = last.hi.max(c.hi);
                    last.unresolved |= c.unresolved;
                }
                _ => merged.push(c),
            }
        }
        let mut moving = Vec::new();
        let mut kept = Vec::new();
        let mut cursor = (domain.0, false);
        let mut push_gap = |lo: (f64, bool), hi: (f64, bool), kept: &mut Vec<FixedComponent>| {
            if hi.0 > lo.0 {
                match direction_on(map, lo.0, hi.0, tol_fp) {
                    Some(direction) => moving.push(MovingInterval {
                        lo: lo.0,
                        hi: hi.0,
                        direction,
                        lo_fixed: lo.1,
                        hi_fixed: hi.1,
                    }),
                    None => kept.push(FixedComponent {
                        lo: lo.0,
                        hi: hi.0,
                        unresolved: true,
                    }),
                }
            }
        };
        for c in &merged {
            push_gap(cursor, (c.lo, true), &mut kept);
            cursor = (c.hi, true);
        }
        push_gap(cursor, (domain.1, false), &mut kept);
        if !kept.is_empty() {
            let mut all = merged;
            all.extend(kept);
            return Self::from_components(map, all, tol_fp);
        }
        let mut boundary: Vec<f64> = merged.iter().flat_map(|c| [c.lo, c.hi]).collect();
        boundary.dedup();
        FixedPointPartition {
            domain,
            fixed_set: merged,
            boundary,
            moving_intervals: moving,
            tol_fp,
        }
    }

    pub fn is_fixed(&self, x: f64) -> bool {
        self.fixed_set.iter().any(|c| x >= c.lo && x <= c.hi)
    }
}

fn direction_on(map: &MonotoneMap, lo: f64, hi: f64, tol: f64) -> Option<i8> {
    let g = |x: f64| map.forward(x) - x;
    let mid = 0.5 * (lo + hi);
    let gm = g(mid);
    if gm.abs() > tol {
        return Some(if gm > 0.0 { 1 } else { -1 });
    }
    let best = (1..64)
        .map(|k| g(lo + (hi - lo) * k as f64 / 64.0))
        .fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
    if best.abs() > tol {
        Some(if best > 0.0 { 1 } else { -1 })
    } else {
        None
    }
}

/// Fixed-point detection with the default grid and the given tolerance.
pub fn find_fixed_points(map: &MonotoneMap, tol_fp: f64) -> FixedPointPartition {
    find_fixed_points_on_grid(map, tol_fp, DETECT_GRID)
}

/// Samples `T(x) - x` on `n` points of the overlap of source and target, bisects sign
/// changes, merges near-zero plateaus, and marks cells that may hide pairs of roots
/// as unresolved.
pub fn find_fixed_points_on_grid(map: &MonotoneMap, tol_fp: f64, n: usize) -> FixedPointPartition {
    let (s, t) = (map.source(), map.target());
    let (lo, hi) = (s.0.max(t.0), s.1.min(t.1));
    let g = |x: f64| map.forward(x) - x;
    let mut comps = Vec::new();
    if lo == hi {
        if g(lo).abs() <= tol_fp {
            comps.push(FixedComponent { lo, hi, unresolved: false });
        }
    } else if lo < hi {
        let n = n.max(3);
        let h = (hi - lo) / (n - 1) as f64;
        let xs: Vec<f64> = (0..n).map(|k| if k + 1 == n { hi } else { lo + h * k as f64 }).collect();
        let gs: Vec<f64> = xs.iter().map(|&x| g(x)).collect();
        let cls: Vec<i8> = gs
            .iter()
            .map(|&v| if v.abs() <= tol_fp { 0 } else if v > 0.0 { 1 } else { -1 })
            .collect();
        let mut k = 0;
        while k < n {
            if cls[k] == 0 {
                let start = k;
                while k + 1 < n && cls[k + 1] == 0 {
                    k += 1;
                }
                if start == k && k > 0 && k + 1 < n && cls[k - 1] * cls[k + 1] < 0 {
                    let r = bisect_root(&g, xs[k - 1], xs[k + 1], gs[k - 1]);
                    comps.push(FixedComponent { lo: r, hi: r, unresolved: false });
                } else {
                    comps.push(FixedComponent {
                        lo: xs[start],
                        hi: xs[k],
                        unresolved: false,
                    });
                }
            }
            k += 1;
        }
        for k in 0..n - 1 {
            let (c0, c1) = (cls[k], cls[k + 1]);
            if c0 == 0 && c1 == 0 {
                continue;
            }
            if c0 * c1 < 0 {
                let r = bisect_root(&g, xs[k], xs[k + 1], gs[k]);
                comps.push(FixedComponent { lo: r, hi: r, unresolved: false });
                continue;
            }
            // Same sign, or one end on a root: a pair of roots fits in the cell only if
            // |g| can reach zero and come back within one step.
            let slope = (map.derivative(xs[k]) - 1.0).abs().max((map.derivative(xs[k + 1]) - 1.0).abs());
            let reach = if c0 == 0 || c1 == 0 { 0.5 * h * slope } else { h * slope };
            if gs[k].abs() + gs[k + 1].abs() < reach {
                comps.push(FixedComponent {
                    lo: xs[k],
                    hi: xs[k + 1],
                    unresolved: true,
                });
            }
        }
    }
    FixedPointPartition::from_components(map, comps, tol_fp)
}

fn bisect_root(g: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, ga: f64) -> f64 {
    let sa = ga > 0.0;
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let gm = g(m);
        if gm == 0.0 {
            return m;
        }
        if (gm > 0.0) == sa {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Why an orbit stopped on one side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The orbit left the region where the map (or its inverse) is defined.
    Boundary,
    /// Steps fell below the truncation threshold near a fixed point.
    Converged,
    /// The step cap was reached.
    MaxSteps,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub delta: f64,
    pub max_steps: usize,
}

impl StopRule {
    pub fn for_width(width: f64) -> Self {
        StopRule {
            delta: DELTA_ORBIT_REL * width,
            max_steps: ORBIT_MAX_STEPS,
        }
    }
}

/// Iterates of a seed point: `forward[i] = T^i(x0)`, `backward[j] = T^{-j}(x0)`.
#[derive(Debug, Clone)]
pub struct OrbitGrid {
    pub interval: MovingInterval,
    pub forward: Vec<f64>,
    pub backward: Vec<f64>,
    pub forward_stop: StopReason,
    pub backward_stop: StopReason,
}

/// Position of a point relative to the orbit grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    /// `y = T^n(x)` for a unique `x` in the seed interval.
    Index(i64),
    /// Beyond the last forward anchor, toward a fixed end.
    ForwardZone,
    /// Beyond the last backward anchor, toward a fixed end.
    BackwardZone,
}

impl OrbitGrid {
    /// `[alpha_0, alpha_1]` as an ordered pair `(alpha_0, alpha_1)`.
    pub fn seed_interval(&self) -> (f64, f64) {
        (self.forward[0], self.forward[1])
    }

    /// `alpha_i` for `i` in the stored range.
    pub fn anchor(&self, i: i64) -> Option<f64> {
        if i >= 0 {
            self.forward.get(i as usize).copied()
        } else {
            self.backward.get((-i) as usize).copied()
        }
    }

    /// Smallest and largest stored anchor index.
    pub fn index_range(&self) -> (i64, i64) {
        (-(self.backward.len() as i64 - 1), self.forward.len() as i64 - 1)
    }

    /// Number of stored anchors.
    pub fn len(&self) -> usize {
        self.forward.len() + self.backward.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn locate(&self, y: f64) -> Location {
        let s = self.interval.direction as f64;
        let key = s * y;
        if key >= s * self.forward[0] {
            let i = self.forward.partition_point(|&a| s * a <= key) - 1;
            if i + 1 == self.forward.len() && self.forward_stop != StopReason::Boundary && key > s * self.forward[i] {
                return Location::ForwardZone;
            }
            Location::Index(i as i64)
        } else {
            let j = self.backward.partition_point(|&a| s * a > key);
            if j == self.backward.len() {
                if self.backward_stop == StopReason::Boundary {
                    Location::Index(-(j as i64))
                } else {
                    Location::BackwardZone
                }
            } else {
                Location::Index(-(j as i64))
            }
        }
    }
}

/// Orbit of `x0` inside a moving interval, forward under `T` and backward under `T^{-1}`.
pub fn build_orbit_grid(map: &MonotoneMap, interval: MovingInterval, x0: f64, stop: StopRule) -> Result<OrbitGrid> {
    if !interval.contains(x0) {
        return Err(Error::DegenerateOrbit(format!(
            "seed point {x0} lies outside the moving interval ({}, {})",
            interval.lo, interval.hi
        )));
    }
    let tol = TOL_FP_REL * map.width();
    if (map.forward(x0) - x0).abs() <= tol {
        return Err(Error::DegenerateOrbit(format!("seed point {x0} is a fixed point")));
    }
    let s = interval.direction as f64;
    let (down_end, down_fixed, up_end, up_fixed) = if s > 0.0 {
        (interval.hi, interval.hi_fixed, interval.lo, interval.lo_fixed)
    } else {
        (interval.lo, interval.lo_fixed, interval.hi, interval.hi_fixed)
    };
    let slack = 1e-14 * map.width();
    let fwd = |x: f64| map.forward(x);
    let bwd = |x: f64| map.inverse(x);
    let (forward, forward_stop) = iterate(&fwd, x0, map.source(), s, down_end, down_fixed, stop, slack);
    let (backward, backward_stop) = iterate(&bwd, x0, map.target(), -s, up_end, up_fixed, stop, slack);
    if forward.len() < 2 {
        return Err(Error::DegenerateOrbit(format!("the image of the seed point {x0} leaves the interval")));
    }
    Ok(OrbitGrid {
        interval,
        forward,
        backward,
        forward_stop,
        backward_stop,
    })
}

#[allow(clippy::too_many_arguments)]
fn iterate(
    step: &dyn Fn(f64) -> f64,
    x0: f64,
    applicable: (f64, f64),
    sign: f64,
    end: f64,
    end_fixed: bool,
    stop: StopRule,
    slack: f64,
) -> (Vec<f64>, StopReason) {
    let mut out = vec![x0];
    let mut cur = x0;
    loop {
        if out.len() > stop.max_steps {
            return (out, StopReason::MaxSteps);
        }
        if cur < applicable.0 - slack || cur > applicable.1 + slack {
            return (out, StopReason::Boundary);
        }
        let mut next = step(cur);
        if sign * (next - end) >= 0.0 {
            if end_fixed {
                return (out, StopReason::Converged);
            }
            next = end;
        }
        let delta = sign * (next - cur);
        if !(delta > 0.0) {
            return (out, StopReason::Converged);
        }
        if delta < stop.delta && end_fixed {
            return (out, StopReason::Converged);
        }
        out.push(next);
        if next == end {
            return (out, StopReason::Boundary);
        }
        cur = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn u(a: f64, b: f64) -> Measure1D {
        Measure1D::uniform(a, b).unwrap()
    }

    #[test]
    fn uniform_pair_gives_affine_map() {
        let t = compute_monotone_map(&u(1.0, 2.0), &u(0.0, 3.0));
        for k in 0..=100 {
            let x = 1.0 + k as f64 / 100.0;
            assert!((t.forward(x) - (3.0 * x - 3.0)).abs() < 1e-13);
            assert!((t.derivative(x) - 3.0).abs() < 1e-13);
            assert!((t.inverse(t.forward(x)) - x).abs() < 1e-13);
        }
    }

    #[test]
    fn gaussian_pair_gives_affine_map() {
        let t = compute_monotone_map(&Measure1D::gaussian(0.0, 1.0).unwrap(), &Measure1D::gaussian(1.0, 2.0).unwrap());
        for k in 0..=60 {
            let x = -3.0 + k as f64 / 10.0;
            assert!((t.forward(x) - (2.0 * x + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn derivative_examples() {
        let id = compute_monotone_map(&u(0.0, 1.0), &u(0.0, 1.0));
        assert!((map_derivative(&id, 0.4).unwrap() - 1.0).abs() < 1e-14);
        assert!(matches!(map_derivative(&id, 1.5), Err(Error::Domain(_))));
        // map from (1/2 - x/9) on [0,3] to (1/2) on [0,2]: x - x^2/9
        let m1 = Measure1D::piecewise(vec![0.0, 3.0], vec![0.5, 0.5 - 1.0 / 3.0]).unwrap();
        let inv = compute_monotone_map(&m1, &u(0.0, 2.0));
        for x in [0.0, 0.5, 2.0, 3.0] {
            assert!((inv.forward(x) - (x - x * x / 9.0)).abs() < 1e-13);
        }
        assert!((map_derivative(&inv, 0.0).unwrap() - 1.0).abs() < 1e-12);
        let h = 1e-4;
        let fd = (inv.forward(1.0 + h) - inv.forward(1.0 - h)) / (2.0 * h);
        assert!((inv.derivative(1.0) - fd).abs() < 1e-8);
    }

    #[test]
    fn jet_of_quadratic_map() {
        let m1 = Measure1D::piecewise(vec![0.0, 3.0], vec![0.5, 0.5 - 1.0 / 3.0]).unwrap();
        let inv = compute_monotone_map(&m1, &u(0.0, 2.0));
        let jet = inv.derivative_jet(3.0, 2, 1.0);
        assert!((jet[0] - (1.0 - 6.0 / 9.0)).abs() < 1e-10);
        assert!((jet[1] + 2.0 / 9.0).abs() < 1e-8);
        assert!(jet[2].abs() < 1e-5);
    }

    #[test]
    fn fixed_points_of_examples() {
        let t = compute_monotone_map(&u(1.0, 2.0), &u(0.0, 3.0));
        let p = find_fixed_points(&t, 1e-10 * 3.0);
        assert_eq!(p.fixed_set.len(), 1);
        assert!((p.fixed_set[0].lo - 1.5).abs() < 1e-14);
        assert_eq!(p.moving_intervals.len(), 2);
        assert_eq!(p.moving_intervals[0].direction, -1);
        assert_eq!(p.moving_intervals[1].direction, 1);

        let id = MonotoneMap::identity(0.0, 1.0).unwrap();
        let p = find_fixed_points(&id, 1e-10);
        assert_eq!(p.fixed_set, vec![FixedComponent { lo: 0.0, hi: 1.0, unresolved: false }]);
        assert!(p.moving_intervals.is_empty());
    }

    #[test]
    fn accumulating_fixed_points_are_resolved_on_coarse_scales() {
        let t = MonotoneMap::explicit(
            (0.0, 1.0),
            Arc::new(|x: f64| if x > 0.0 { x + 0.2 * x.powi(3) * (std::f64::consts::PI / x).sin() } else { 0.0 }),
            Arc::new(|x: f64| {
                if x > 0.0 {
                    let a = std::f64::consts::PI / x;
                    1.0 + 0.2 * (3.0 * x * x * a.sin() - std::f64::consts::PI * x * a.cos())
                } else {
                    1.0
                }
            }),
            None,
        )
        .unwrap();
        let p = find_fixed_points(&t, 1e-10);
        for n in 1..=20 {
            let target = 1.0 / n as f64;
            assert!(
                p.fixed_set.iter().any(|c| (c.lo - target).abs() < 1e-12 && c.hi == c.lo),
                "missing 1/{n}"
            );
        }
        assert!(p.fixed_set[0].lo == 0.0);
        for m in &p.moving_intervals {
            let mid = 0.5 * (m.lo + m.hi);
            assert_eq!((t.forward(mid) - mid).signum() as i8, m.direction, "{m:?} g={}", t.forward(mid) - mid);
        }
    }

    #[test]
    fn orbit_of_translation() {
        let t = MonotoneMap::affine(1.0, 1.0, (-10.0, 10.0)).unwrap();
        let iv = MovingInterval { lo: -10.0, hi: 11.0, direction: 1, lo_fixed: false, hi_fixed: false };
        let g = build_orbit_grid(&t, iv, 0.0, StopRule { delta: 1e-12, max_steps: 3 }).unwrap();
        assert_eq!(g.forward, vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(g.forward_stop, StopReason::MaxSteps);
    }

    #[test]
    fn orbit_toward_fixed_point() {
        // inverse of 3x - 3 from the reversed measures: (x + 3) / 3
        let s = compute_monotone_map(&u(0.0, 3.0), &u(1.0, 2.0));
        let iv = MovingInterval { lo: 0.0, hi: 1.5, direction: 1, lo_fixed: false, hi_fixed: true };
        let g = build_orbit_grid(&s, iv, 0.0, StopRule::for_width(3.0)).unwrap();
        let mut a = 0.0;
        for k in 0..10 {
            assert!((g.forward[k] - a).abs() < 1e-14);
            a = (a + 3.0) / 3.0;
        }
        assert_eq!(g.forward_stop, StopReason::Converged);
        assert!((g.forward.last().unwrap() - 1.5).abs() < 1e-11);
        for w in g.forward.windows(2) {
            assert!(w[1] > w[0]);
            assert_eq!(s.forward(w[0]), w[1]);
        }
        assert!(build_orbit_grid(&s, iv, 1.5, StopRule::for_width(3.0)).is_err());
    }

    #[test]
    fn locate_indices() {
        let t = MonotoneMap::affine(3.0, -3.0, (1.0, 2.0)).unwrap();
        let iv = MovingInterval { lo: 1.5, hi: 3.0, direction: 1, lo_fixed: true, hi_fixed: false };
        let g = build_orbit_grid(&t, iv, 2.0, StopRule::for_width(3.0)).unwrap();
        assert_eq!(g.forward, vec![2.0, 3.0]);
        assert_eq!(g.locate(2.5), Location::Index(0));
        assert_eq!(g.locate(3.0), Location::Index(1));
        assert_eq!(g.locate(1.9), Location::Index(-1));
        assert_eq!(g.locate(1.6), Location::Index(-2));
        assert_eq!(g.locate(1.5 + 1e-14), Location::BackwardZone);
    }
}
