//! A monotone map of `[0, 1]` with an indeterminate fixed point at 0 for which every
//! sign-definite realizing velocity blows up near 0.
//!
//! `T(x) = x - S(x)`, where `S` interpolates the step sizes `beta_i` between the orbit
//! points `alpha_{i+1} = alpha_i - beta_i`, `alpha_0 = 1/2`, with one bump profile per
//! orbit interval. The products `P_i = prod_{j<i} T'(alpha_j)` diverge, so any `v` with
//! `v(T x) = T'(x) v(x)` is unbounded; with `beta_i ~ 1/(i log^2 i)` it is not even
//! integrable.

use std::f64::consts::PI;
use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::map::{solve_increasing, MonotoneMap, StopRule, DELTA_ORBIT_REL};
use crate::velocity::{build_one_fixed_point, BuildOptions, SeedSpec, VelocityField1D};

/// Number of orbit intervals stored explicitly; below `alpha_TABLE_LEN` a quadratic tail is used.
pub const TABLE_LEN: usize = (1 << 20) + 16;

/// Orbit steps used when building a velocity for the map.
pub const ORBIT_STEPS: usize = 1_000_000;

/// First index of the `1/(k log^2 k)` sequence. Smaller offsets break `beta_{i+1}/beta_i >= 2/3`.
pub const LOG_SQUARED_OFFSET: usize = 5;

const QUADRATIC_OFFSET: usize = 10;
const QUINTIC_CURVATURE: f64 = 15.0;
const TAIL_KNOT: f64 = 0.9;
const MIN_STEP_RATIO: f64 = 2.0 / 3.0;
const BUMP_CHECK_POINTS: usize = 2001;
const LOG_SUM_TERMS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `beta_i = gamma / (i + 10)^2`.
    Quadratic,
    /// `beta_i = gamma / (k log^2 k)`, `k = i + LOG_SQUARED_OFFSET`.
    LogSquared,
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadratic" => Ok(Variant::Quadratic),
            "log_squared" | "log-squared" => Ok(Variant::LogSquared),
            other => Err(Error::Parse(format!(
                "unknown variant `{other}`; expected quadratic or log_squared"
            ))),
        }
    }
}

impl Variant {
    pub fn offset(self) -> usize {
        match self {
            Variant::Quadratic => QUADRATIC_OFFSET,
            Variant::LogSquared => LOG_SQUARED_OFFSET,
        }
    }

    /// Unnormalized step `f(k)` at `k = i + offset`.
    fn profile(self, k: f64) -> f64 {
        match self {
            Variant::Quadratic => 1.0 / (k * k),
            Variant::LogSquared => {
                let l = k.ln();
                1.0 / (k * l * l)
            }
        }
    }

    /// `sum_{k >= offset} f(k)`.
    fn profile_sum(self) -> f64 {
        match self {
            Variant::Quadratic => {
                let head: f64 = (1..QUADRATIC_OFFSET).map(|j| 1.0 / (j * j) as f64).sum();
                PI * PI / 6.0 - head
            }
            Variant::LogSquared => {
                let n = (LOG_SQUARED_OFFSET + LOG_SUM_TERMS) as f64;
                let direct: f64 = (LOG_SQUARED_OFFSET..LOG_SQUARED_OFFSET + LOG_SUM_TERMS)
                    .rev()
                    .map(|k| self.profile(k as f64))
                    .sum();
                // Euler-Maclaurin from n: int_n^inf f + f(n)/2 - f'(n)/12.
                let l = n.ln();
                let df = -(l + 2.0) / (n * n * l * l * l);
                direct + 1.0 / l + 0.5 * self.profile(n) - df / 12.0
            }
        }
    }

    pub fn default_bump(self) -> Bump {
        match self {
            Variant::Quadratic => Bump::Quintic,
            Variant::LogSquared => Bump::LinearTail,
        }
    }
}

/// Transition profile `phi` on `[0, 1]` with `phi(0) = 0`, `phi'(0) = -g`, `phi(1) = 1`,
/// `phi'(1) = -1/4`, `-1/4 <= phi <= 5/4` and `-1/2 <= phi' <= 3/2` for `0 <= g < 1/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bump {
    /// Quintic with `phi''(0) = 15`, `phi''(1) = -15`.
    Quintic,
    /// Quintic on `[0, 0.9]` joined to the line `phi = 5/4 - u/4` on `[0.9, 1]`; C^1 at the knot.
    LinearTail,
}

/// Quintic on `[0, len]` with value, slope and curvature prescribed at both ends,
/// as coefficients in `t = u / len`.
fn hermite_quintic(y0: f64, m0: f64, c0: f64, y1: f64, m1: f64, c1: f64, len: f64) -> [f64; 6] {
    let a1 = m0 * len;
    let a2 = 0.5 * c0 * len * len;
    let r0 = y1 - y0 - a1 - a2;
    let r1 = m1 * len - a1 - 2.0 * a2;
    let r2 = c1 * len * len - 2.0 * a2;
    [
        y0,
        a1,
        a2,
        10.0 * r0 - 4.0 * r1 + 0.5 * r2,
        -15.0 * r0 + 7.0 * r1 - r2,
        6.0 * r0 - 3.0 * r1 + 0.5 * r2,
    ]
}

fn poly_with_slope(c: &[f64; 6], t: f64) -> (f64, f64) {
    let p = c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * (c[4] + t * c[5]))));
    let d = c[1] + t * (2.0 * c[2] + t * (3.0 * c[3] + t * (4.0 * c[4] + t * 5.0 * c[5])));
    (p, d)
}

impl Bump {
    /// `(phi_g(u), phi_g'(u))`.
    pub fn eval(self, g: f64, u: f64) -> (f64, f64) {
        match self {
            Bump::Quintic => {
                let c = hermite_quintic(0.0, -g, QUINTIC_CURVATURE, 1.0, -0.25, -QUINTIC_CURVATURE, 1.0);
                poly_with_slope(&c, u)
            }
            Bump::LinearTail => {
                if u >= TAIL_KNOT {
                    return (1.25 - 0.25 * u, -0.25);
                }
                let y1 = 1.25 - 0.25 * TAIL_KNOT;
                let c = hermite_quintic(0.0, -g, 16.25 + 10.5 * g, y1, -0.25, -18.25 - 2.5 * g, TAIL_KNOT);
                let (p, d) = poly_with_slope(&c, u / TAIL_KNOT);
                (p, d / TAIL_KNOT)
            }
        }
    }

    /// Checks the range bounds on a fine grid. The profile is affine in `g`, so checking
    /// the extreme values of `g` covers everything in between.
    pub fn check(self, g_lo: f64, g_hi: f64) -> Result<()> {
        if !(g_lo >= 0.0 && g_hi < 0.5) {
            return Err(Error::Construction(format!(
                "slope parameters in [{g_lo}, {g_hi}] leave [0, 1/2)"
            )));
        }
        for g in [g_lo, g_hi] {
            for k in 0..BUMP_CHECK_POINTS {
                let u = k as f64 / (BUMP_CHECK_POINTS - 1) as f64;
                let (p, d) = self.eval(g, u);
                let tol = 1e-12;
                if p < -0.25 - tol || p > 1.25 + tol || d < -0.5 - tol || d > 1.5 + tol {
                    return Err(Error::Construction(format!(
                        "{self:?} profile leaves its bounds at g = {g}, u = {u}: phi = {p}, phi' = {d}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Region {
    Right,
    Interval(usize),
    Tail,
}

/// The map `T = id - S` on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct CounterexampleMap {
    pub variant: Variant,
    pub bump: Bump,
    pub gamma: f64,
    pub index_offset: usize,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    len: usize,
    right_slope: f64,
}

/// Counterexample with the default profile and table length.
pub fn build_counterexample(variant: Variant) -> Result<CounterexampleMap> {
    CounterexampleMap::new(variant, variant.default_bump(), TABLE_LEN)
}

impl CounterexampleMap {
    /// Tabulates `len` orbit intervals and checks the construction conditions on them.
    pub fn new(variant: Variant, bump: Bump, len: usize) -> Result<Self> {
        if len < 4 {
            return Err(Error::Construction(format!("table length {len} is too short")));
        }
        let gamma = 0.5 / variant.profile_sum();
        let offset = variant.offset();
        let beta: Vec<f64> = (0..len + 2)
            .map(|i| gamma * variant.profile((i + offset) as f64))
            .collect();
        let mut alpha = Vec::with_capacity(len + 2);
        alpha.push(0.5);
        for i in 0..len + 1 {
            alpha.push(alpha[i] - beta[i]);
        }
        let mut g_lo = f64::INFINITY;
        let mut g_hi = f64::NEG_INFINITY;
        for i in 0..len {
            let r = beta[i + 1] / beta[i];
            if !(MIN_STEP_RATIO..1.0).contains(&r) {
                return Err(Error::Construction(format!(
                    "step ratio beta_{}/beta_{i} = {r} is outside [2/3, 1)",
                    i + 1
                )));
            }
            let g = slope_parameter(&beta, i);
            g_lo = g_lo.min(g);
            g_hi = g_hi.max(g);
        }
        bump.check(g_lo, g_hi)?;
        let right_slope = -(beta[0] - beta[1]) / (4.0 * beta[0]);
        Ok(CounterexampleMap {
            variant,
            bump,
            gamma,
            index_offset: offset,
            beta,
            alpha,
            len,
            right_slope,
        })
    }

    pub fn table_len(&self) -> usize {
        self.len
    }

    pub fn alpha(&self, i: usize) -> f64 {
        self.alpha[i]
    }

    pub fn beta(&self, i: usize) -> f64 {
        self.beta[i]
    }

    /// `beta_i` from the closed form, for any `i`.
    pub fn beta_at(&self, i: usize) -> f64 {
        self.gamma * self.variant.profile((i + self.index_offset) as f64)
    }

    fn locate(&self, x: f64) -> Region {
        if x > self.alpha[0] {
            Region::Right
        } else if x > self.alpha[self.len] {
            let count = self.alpha[..=self.len].partition_point(|&a| a >= x);
            Region::Interval(count - 1)
        } else {
            Region::Tail
        }
    }

    /// `(S, S')` on the orbit interval `(alpha_{i+1}, alpha_i]`.
    fn on_interval(&self, i: usize, x: f64) -> (f64, f64) {
        let (b0, b1) = (self.beta[i], self.beta[i + 1]);
        let h = self.alpha[i] - self.alpha[i + 1];
        let g = slope_parameter(&self.beta, i);
        if x >= self.alpha[i] {
            return (b0, (b0 - b1) * self.bump.eval(g, 1.0).1 / h);
        }
        let (p, d) = self.bump.eval(g, (x - self.alpha[i + 1]) / h);
        (b1 + (b0 - b1) * p, (b0 - b1) * d / h)
    }

    fn s_with_slope(&self, x: f64) -> (f64, f64) {
        match self.locate(x) {
            Region::Right => (self.beta[0] + self.right_slope * (x - 0.5), self.right_slope),
            Region::Interval(i) => self.on_interval(i, x),
            Region::Tail => {
                let (a, b) = (self.alpha[self.len], self.beta[self.len]);
                let x = x.max(0.0);
                (b * (x / a) * (x / a), 2.0 * b * x / (a * a))
            }
        }
    }

    pub fn s(&self, x: f64) -> f64 {
        self.s_with_slope(x).0
    }

    pub fn t(&self, x: f64) -> f64 {
        x - self.s(x)
    }

    pub fn t_prime(&self, x: f64) -> f64 {
        1.0 - self.s_with_slope(x).1
    }

    pub fn t_inverse(&self, y: f64) -> f64 {
        if y > self.alpha[1] {
            return (y + self.beta[0] - 0.5 * self.right_slope) / (1.0 - self.right_slope);
        }
        if y > self.alpha[self.len + 1] {
            let count = self.alpha.partition_point(|&a| a >= y);
            let j = count - 1;
            if y == self.alpha[j] {
                return self.alpha[j - 1];
            }
            let i = j - 1;
            let f = |x: f64| x - self.on_interval(i, x).0;
            let df = |x: f64| 1.0 - self.on_interval(i, x).1;
            return solve_increasing(&f, &df, y, (self.alpha[i + 1], self.alpha[i]));
        }
        let c = self.beta[self.len] / (self.alpha[self.len] * self.alpha[self.len]);
        let y = y.max(0.0);
        2.0 * y / (1.0 + (1.0 - 4.0 * c * y).sqrt())
    }

    /// `T` as a monotone map on `[0, hi]`.
    pub fn monotone_map(&self, hi: f64) -> Result<MonotoneMap> {
        let a = Arc::new(self.clone());
        let (b, c) = (a.clone(), a.clone());
        MonotoneMap::explicit(
            (0.0, hi),
            Arc::new(move |x| a.t(x)),
            Arc::new(move |x| b.t_prime(x)),
            Some(Arc::new(move |y| c.t_inverse(y))),
        )
    }

    /// `(min T', max T')` over `n` equispaced points of `[0, 1]`.
    pub fn derivative_range(&self, n: usize) -> (f64, f64) {
        (0..n).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), k| {
            let d = self.t_prime(k as f64 / (n - 1) as f64);
            (lo.min(d), hi.max(d))
        })
    }

    /// Velocity for `uniform[0, 1/2] -> T_# uniform[0, 1/2]`, sign-definite on `(0, 1/2]`.
    pub fn build_field(&self, seed: &SeedSpec) -> Result<VelocityField1D> {
        let map = self.monotone_map(0.5)?;
        let steps = ORBIT_STEPS.min(self.len - 1);
        let opts = BuildOptions {
            stop: Some(StopRule {
                delta: DELTA_ORBIT_REL * map.width(),
                max_steps: steps,
            }),
            ..Default::default()
        };
        build_one_fixed_point(&map, seed, 0.0, &opts)
    }
}

/// `gbar_i`: the slope parameter of the profile on `(alpha_{i+1}, alpha_i)` that makes `S`
/// continuously differentiable at `alpha_{i+1}`.
fn slope_parameter(beta: &[f64], i: usize) -> f64 {
    let (b0, b1, b2) = (beta[i], beta[i + 1], beta[i + 2]);
    b0 * (b1 - b2) / (4.0 * b1 * (b0 - b1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthRow {
    pub i: u64,
    pub alpha: f64,
    pub beta: f64,
    pub t_prime: f64,
    /// `P_i = prod_{j<i} T'(alpha_j)`.
    pub product: f64,
    /// `(1/4) sum_{j<i} (1 - beta_{j+1}/beta_j)`.
    pub lower_bound: f64,
    /// `lower_bound / (1/alpha_i - 2 log alpha_i)`.
    pub bound_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthTable {
    pub variant: Variant,
    pub index_offset: usize,
    pub i_max: u64,
    pub threshold: f64,
    pub rows: Vec<GrowthRow>,
    pub strictly_increasing: bool,
    pub lower_bound_holds: bool,
    pub first_above_threshold: Option<u64>,
}

fn keep_row(i: u64) -> bool {
    if i <= 32 {
        return true;
    }
    // About 16 rows per decade.
    let l = (i as f64).log10() * 16.0;
    let prev = ((i - 1) as f64).log10() * 16.0;
    l.floor() != prev.floor()
}

/// Streams `P_i` for `i <= i_max`, continuing the sequences past the stored table.
pub fn probe_velocity_growth(cmap: &CounterexampleMap, i_max: u64, threshold: f64) -> GrowthTable {
    let mut rows = Vec::new();
    let mut alpha = 0.5;
    let mut product = 1.0f64;
    let mut sum = 0.0f64;
    let mut increasing = true;
    let mut bound_holds = true;
    let mut first = None;
    let mut b = [cmap.beta_at(0), cmap.beta_at(1), cmap.beta_at(2)];
    for i in 0..=i_max {
        let g = slope_parameter(&b, 0);
        let t_prime = 1.0 - (b[0] - b[1]) * cmap.bump.eval(g, 1.0).1 / b[0];
        let lower_bound = 0.25 * sum;
        if product < lower_bound {
            bound_holds = false;
        }
        if first.is_none() && product > threshold {
            first = Some(i);
        }
        if keep_row(i) || i == i_max || first == Some(i) {
            rows.push(GrowthRow {
                i,
                alpha,
                beta: b[0],
                t_prime,
                product,
                lower_bound,
                bound_ratio: lower_bound / (1.0 / alpha - 2.0 * alpha.ln()),
            });
        }
        let next = product * t_prime;
        if !(next > product) {
            increasing = false;
        }
        product = next;
        sum += 1.0 - b[1] / b[0];
        alpha -= b[0];
        b = [b[1], b[2], cmap.beta_at(i as usize + 3)];
    }
    GrowthTable {
        variant: cmap.variant,
        index_offset: cmap.index_offset,
        i_max,
        threshold,
        rows,
        strictly_increasing: increasing,
        lower_bound_holds: bound_holds,
        first_above_threshold: first,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegrabilityRow {
    /// Number of orbit intervals `n` summed; the rows cover `(delta, 1/2]`.
    pub intervals: u64,
    /// `delta = alpha_n`.
    pub delta: f64,
    /// `sum_{i<n} beta_i |v(alpha_i)|`.
    pub anchor_sum: f64,
    /// `sum_{i<n} int_{W_i} |v|` over the windows `W_i = (alpha_i - beta_i/10, alpha_i]`,
    /// a lower bound for `int_delta^{1/2} |v|`; only for the linear-tail profile.
    pub window_mass: Option<f64>,
    /// `int_delta^{1/2} dx / |v| = n * period`.
    pub travel_time: f64,
    /// `max |v(alpha_i)|`, `i <= n`.
    pub max_anchor_speed: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IntegrabilityTable {
    pub variant: Variant,
    pub rows: Vec<IntegrabilityRow>,
    /// Ratios of consecutive per-decade increments of the L1 lower bound, from `10^3` on.
    pub decade_ratios: Vec<f64>,
    /// `|v(alpha_i)|` strictly increasing along the orbit.
    pub anchor_speed_increasing: bool,
}

impl IntegrabilityTable {
    /// Mass used for the growth checks: the window mass when available, else the anchor sum.
    pub fn mass(row: &IntegrabilityRow) -> f64 {
        row.window_mass.unwrap_or(row.anchor_sum)
    }

    pub fn strictly_increasing(&self) -> bool {
        self.rows.windows(2).all(|w| Self::mass(&w[1]) > Self::mass(&w[0]))
    }

    /// No decade from `10^3` on adds less than half of the previous one.
    pub fn plateau_free(&self) -> bool {
        !self.decade_ratios.is_empty() && self.decade_ratios.iter().all(|&r| r >= 0.5)
    }
}

/// Width of the window below each anchor, relative to the step.
const WINDOW_FRACTION: f64 = 0.1;

/// Partial masses of `|v|` over `(alpha_n, 1/2]` for `n = 1, 10, ..., 10^max_decade`.
///
/// With the linear-tail profile `T` is affine with slope `T'(alpha_j)` on the last tenth of
/// every orbit interval, and `T^{-i}` maps `W_i` into such tails all the way back. Hence
/// `T^i` is affine with slope `P_i = v(alpha_i)/v(1/2)` from `(1/2 - w_i, 1/2]` onto `W_i`,
/// `w_i = beta_i / (10 P_i)`, and `int_{W_i} |v| = P_i^2 int_{1/2 - w_i}^{1/2} |v|` exactly.
pub fn probe_non_integrability(cmap: &CounterexampleMap, field: &VelocityField1D, max_decade: u32) -> Result<IntegrabilityTable> {
    let piece = field
        .pieces()
        .first()
        .ok_or_else(|| Error::Precondition("the field has no moving interval".into()))?;
    let (s0, s1) = piece.seed_interval();
    let (lo, hi) = (s0.min(s1), s0.max(s1));
    if hi != cmap.alpha(0) || (lo - cmap.alpha(1)).abs() > 1e-15 {
        return Err(Error::Precondition(format!(
            "seed interval [{lo}, {hi}] is not [alpha_1, alpha_0]"
        )));
    }
    let last = 10u64.pow(max_decade);
    if piece.anchor_velocity(last as i64).is_none() {
        return Err(Error::Precondition(format!(
            "the field stores fewer than 10^{max_decade} orbit steps"
        )));
    }
    let windows = cmap.bump == Bump::LinearTail;
    let speed = |x: f64| (piece.time_scale * piece.seed_value(x)).abs();
    let v_top = speed(hi);
    let seed_mass = |w: f64| crate::quad::gk15(&speed, hi - w, hi).0;

    let mut rows = Vec::new();
    let mut anchor_sum = 0.0f64;
    let mut window_mass = 0.0f64;
    let mut max_speed = 0.0f64;
    let mut speed_increasing = true;
    let mut prev = 0.0f64;
    let mut next_mark = 1u64;
    for i in 0..last {
        let iu = i as usize;
        let v = piece.anchor_velocity(i as i64).unwrap_or(f64::NAN).abs();
        if i > 0 && !(v > prev) {
            speed_increasing = false;
        }
        prev = v;
        max_speed = max_speed.max(v);
        let beta = cmap.alpha(iu) - cmap.alpha(iu + 1);
        anchor_sum += beta * v;
        if windows {
            let p = v / v_top;
            window_mass += p * p * seed_mass(WINDOW_FRACTION * beta / p);
        }
        if i + 1 == next_mark {
            rows.push(IntegrabilityRow {
                intervals: i + 1,
                delta: cmap.alpha(iu + 1),
                anchor_sum,
                window_mass: windows.then_some(window_mass),
                travel_time: (i + 1) as f64 * piece.period(),
                max_anchor_speed: max_speed.max(piece.anchor_velocity(i as i64 + 1).unwrap_or(0.0).abs()),
            });
            next_mark *= 10;
        }
    }
    let from = rows.iter().position(|r| r.intervals >= 1000).unwrap_or(rows.len());
    let increments: Vec<f64> = rows[from..]
        .windows(2)
        .map(|w| IntegrabilityTable::mass(&w[1]) - IntegrabilityTable::mass(&w[0]))
        .collect();
    Ok(IntegrabilityTable {
        variant: cmap.variant,
        rows,
        decade_ratios: increments.windows(2).map(|w| w[1] / w[0]).collect(),
        anchor_speed_increasing: speed_increasing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(variant: Variant) -> CounterexampleMap {
        CounterexampleMap::new(variant, variant.default_bump(), 4096).unwrap()
    }

    #[test]
    fn quadratic_steps_sum_to_half() {
        // Sum_{j >= 10} j^-2 by direct summation with an integral tail.
        let n = 2_000_000u64;
        let direct: f64 = (10..n).rev().map(|j| 1.0 / (j as f64 * j as f64)).sum();
        let tail = 1.0 / (n as f64 - 0.5);
        let gamma = 0.5 / (direct + tail);
        let c = small(Variant::Quadratic);
        assert!((c.gamma - gamma).abs() < 1e-10 * gamma);
        assert!((c.beta(0) - gamma / 100.0).abs() < 1e-14);
    }

    #[test]
    fn log_squared_steps_sum_to_half() {
        let c = small(Variant::LogSquared);
        let n = 4_000_000usize;
        let direct: f64 = (0..n).rev().map(|i| c.beta_at(i)).sum();
        // Tail: gamma int_{m - 1/2}^inf dk / (k log^2 k) = gamma / log(m - 1/2).
        let m = (n + LOG_SQUARED_OFFSET) as f64;
        let total = direct + c.gamma / (m - 0.5).ln();
        assert!((total - 0.5).abs() < 1e-10, "{total}");
    }

    #[test]
    fn step_ratio_identity() {
        let c = small(Variant::Quadratic);
        for i in [0usize, 1, 7, 100, 4000] {
            let lhs = 1.0 - c.beta(i + 1) / c.beta(i);
            let rhs = (2 * i + 21) as f64 / ((i + 11) * (i + 11)) as f64;
            assert!((lhs - rhs).abs() < 1e-13, "{i}");
        }
    }

    #[test]
    fn anchors_are_an_orbit() {
        for v in [Variant::Quadratic, Variant::LogSquared] {
            let c = small(v);
            for i in [0usize, 1, 2, 50, 1000, 4095] {
                assert_eq!(c.t(c.alpha(i)), c.alpha(i + 1), "{v:?} {i}");
                let expect = 1.0 + (c.beta(i) - c.beta(i + 1)) / (4.0 * c.beta(i));
                assert!((c.t_prime(c.alpha(i)) - expect).abs() < 1e-12, "{v:?} {i}");
            }
        }
    }

    #[test]
    fn derivative_stays_in_bounds_and_is_continuous() {
        for v in [Variant::Quadratic, Variant::LogSquared] {
            let c = small(v);
            let (lo, hi) = c.derivative_range(100_001);
            assert!(lo >= 0.5 && hi <= 1.5, "{v:?}: [{lo}, {hi}]");
            for i in [0usize, 3, 40, 900] {
                let a = c.alpha(i);
                let h = 1e-9 * c.beta(i);
                assert!((c.t_prime(a - h) - c.t_prime(a + h)).abs() < 1e-6, "{v:?} {i}");
            }
        }
    }

    #[test]
    fn inverse_round_trip() {
        let c = small(Variant::LogSquared);
        for k in 0..=200 {
            let x = k as f64 / 200.0;
            let y = c.t(x);
            assert!((c.t_inverse(y) - x).abs() < 1e-13, "{x}");
        }
        assert_eq!(c.t_inverse(c.alpha(7)), c.alpha(6));
    }

    #[test]
    fn bump_endpoint_conditions() {
        for b in [Bump::Quintic, Bump::LinearTail] {
            for g in [0.0, 0.2, 0.26, 0.49] {
                let (p0, d0) = b.eval(g, 0.0);
                let (p1, d1) = b.eval(g, 1.0);
                assert!(p0.abs() < 1e-14 && (d0 + g).abs() < 1e-13);
                assert!((p1 - 1.0).abs() < 1e-13 && (d1 + 0.25).abs() < 1e-13);
            }
            b.check(0.0, 0.499).unwrap();
        }
        for k in 0..=10 {
            let u = 0.9 + 0.01 * k as f64;
            assert_eq!(Bump::LinearTail.eval(0.3, u).1, -0.25);
        }
        let left = Bump::LinearTail.eval(0.3, 0.9 - 1e-12);
        assert!((left.0 - 1.025).abs() < 1e-10 && (left.1 + 0.25).abs() < 1e-9);
        assert!(matches!(Bump::Quintic.check(0.0, 0.5), Err(Error::Construction(_))));
    }

    #[test]
    fn growth_product_and_bound() {
        let c = small(Variant::Quadratic);
        let t = probe_velocity_growth(&c, 20_000, 10.0);
        assert!(t.strictly_increasing && t.lower_bound_holds);
        assert_eq!(t.rows[0].product, 1.0);
        let mut p = 1.0;
        for i in 0..=30usize {
            let row = t.rows[i];
            assert_eq!(row.i, i as u64);
            assert!((row.product - p).abs() < 1e-12 * p);
            assert!((row.alpha - c.alpha(i)).abs() < 1e-15);
            p *= 1.0 + (c.beta(i) - c.beta(i + 1)) / (4.0 * c.beta(i));
        }
        let i = t.first_above_threshold.unwrap();
        let row = t.rows.iter().find(|r| r.i == i).unwrap();
        assert!(row.product > 10.0);
    }

    #[test]
    fn parses_variants() {
        assert_eq!("quadratic".parse::<Variant>().unwrap(), Variant::Quadratic);
        assert_eq!("log_squared".parse::<Variant>().unwrap(), Variant::LogSquared);
        assert!("cubic".parse::<Variant>().is_err());
    }

    #[test]
    fn window_mass_matches_direct_quadrature() {
        let c = small(Variant::LogSquared);
        let f = c.build_field(&SeedSpec::affine()).unwrap();
        let t = probe_non_integrability(&c, &f, 3).unwrap();
        let mut direct = 0.0;
        for i in 0..100 {
            let (a, b) = (c.alpha(i), c.alpha(i) - 0.1 * (c.alpha(i) - c.alpha(i + 1)));
            direct += crate::quad::integrate(&|y| f.eval(y).unwrap().abs(), b, a, 1e-15);
        }
        let row = t.rows.iter().find(|r| r.intervals == 100).unwrap();
        let m = row.window_mass.unwrap();
        assert!((m - direct).abs() < 1e-9 * direct, "{m} vs {direct}");
        assert!(t.anchor_speed_increasing && t.strictly_increasing());
        assert!(row.anchor_sum > m);
        assert!((row.travel_time - 100.0).abs() < 1e-9);
    }

    #[test]
    fn quadratic_anchor_speeds_increase() {
        let c = small(Variant::Quadratic);
        let f = c.build_field(&SeedSpec::affine()).unwrap();
        let t = probe_non_integrability(&c, &f, 3).unwrap();
        assert!(t.anchor_speed_increasing);
        assert!(t.rows.iter().all(|r| r.window_mass.is_none()));
    }
}
