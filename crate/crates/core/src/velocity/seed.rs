//! Seed velocities on the fundamental interval `[alpha_0, alpha_1]`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{Func, MonotoneMap};
use crate::quad;

/// Largest supported order for Hermite seeds.
pub const MAX_HERMITE_ORDER: usize = 3;
const SIGN_SAMPLES: usize = 257;
const TABLE_CELLS: usize = 64;
const COMPAT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedKind {
    /// `v = c`; only compatible when `T'(alpha_0) = 1`.
    Constant,
    /// Linear in `x`, with `v(alpha_1) = T'(alpha_0) v(alpha_0)`.
    Affine,
    /// Polynomial of degree `2k+1` matching `k` derivatives across `alpha_1`.
    HermiteCk,
    /// User closure, checked for compatibility and sign.
    Profile,
}

/// How to prescribe the velocity on the seed interval.
///
/// `values` are optional free parameters: the value at `alpha_0` for constant and
/// affine seeds (affine also accepts the value at `alpha_1`), and the derivatives
/// `v(alpha_0), v'(alpha_0), ...` for Hermite seeds.
#[derive(Clone, Serialize, Deserialize)]
pub struct SeedSpec {
    pub kind: SeedKind,
    #[serde(default)]
    pub order_k: usize,
    #[serde(default)]
    pub values: Vec<f64>,
    #[serde(skip)]
    pub profile: Option<Func>,
}

impl fmt::Debug for SeedSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SeedSpec")
            .field("kind", &self.kind)
            .field("order_k", &self.order_k)
            .field("values", &self.values)
            .field("profile", &self.profile.as_ref().map(|_| "<closure>"))
            .finish()
    }
}

impl Default for SeedSpec {
    fn default() -> Self {
        Self::affine()
    }
}

impl SeedSpec {
    pub fn constant(c: Option<f64>) -> Self {
        SeedSpec {
            kind: SeedKind::Constant,
            order_k: 0,
            values: c.into_iter().collect(),
            profile: None,
        }
    }

    pub fn affine() -> Self {
        SeedSpec {
            kind: SeedKind::Affine,
            order_k: 0,
            values: Vec::new(),
            profile: None,
        }
    }

    pub fn affine_from(v0: f64) -> Self {
        SeedSpec {
            values: vec![v0],
            ..Self::affine()
        }
    }

    pub fn hermite(k: usize) -> Self {
        SeedSpec {
            kind: SeedKind::HermiteCk,
            order_k: k,
            values: Vec::new(),
            profile: None,
        }
    }

    pub fn profile(f: Func) -> Self {
        SeedSpec {
            kind: SeedKind::Profile,
            order_k: 0,
            values: Vec::new(),
            profile: Some(f),
        }
    }

    pub fn with_values(mut self, values: Vec<f64>) -> Self {
        self.values = values;
        self
    }
}

#[derive(Clone)]
enum Shape {
    /// Coefficients in `u = (x - a0) / len`.
    Poly(Vec<f64>),
    Profile(Func),
}

/// A resolved seed with its cumulative `int dx / s` table.
#[derive(Clone)]
pub(crate) struct SeedFn {
    a0: f64,
    len: f64,
    shape: Shape,
    cum: Vec<f64>,
}

impl fmt::Debug for SeedFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let shape = match &self.shape {
            Shape::Poly(c) => format!("poly{c:?}"),
            Shape::Profile(_) => "profile".to_string(),
        };
        write!(f, "SeedFn([{}, {}], {shape})", self.a0, self.a0 + self.len)
    }
}

impl SeedFn {
    pub(crate) fn eval(&self, x: f64) -> f64 {
        match &self.shape {
            Shape::Poly(c) => horner(c, (x - self.a0) / self.len),
            Shape::Profile(f) => f(x),
        }
    }

    /// Clamp `x` into the seed interval.
    pub(crate) fn clamp(&self, x: f64) -> f64 {
        let (lo, hi) = ordered(self.a0, self.a0 + self.len);
        x.clamp(lo, hi)
    }

    /// `int_{a0}^{a1} dx / s(x)`, positive.
    pub(crate) fn travel_time(&self) -> f64 {
        self.cum[TABLE_CELLS]
    }

    fn affine_pq(&self) -> Option<(f64, f64)> {
        match &self.shape {
            Shape::Poly(c) if c.len() <= 2 => Some((c[0], c.get(1).copied().unwrap_or(0.0))),
            _ => None,
        }
    }

    /// `int_{a0}^{x} dx / s(x)`.
    pub(crate) fn integral_to(&self, x: f64) -> f64 {
        let u = ((x - self.a0) / self.len).clamp(0.0, 1.0);
        if let Some((p, q)) = self.affine_pq() {
            let z = q * u / p;
            return self.len * u / p * ln1p_ratio(z);
        }
        let j = ((u * TABLE_CELLS as f64) as usize).min(TABLE_CELLS - 1);
        let xj = self.node(j);
        let xe = self.a0 + self.len * u;
        let (part, _) = quad::gk15(&|t| 1.0 / self.eval(t), xj, xe);
        self.cum[j] + part
    }

    /// Inverse of [`Self::integral_to`].
    pub(crate) fn point_at(&self, w: f64) -> f64 {
        let total = self.travel_time();
        if !(w > 0.0) {
            return self.a0;
        }
        if w >= total {
            return self.a0 + self.len;
        }
        if let Some((p, q)) = self.affine_pq() {
            let z = q * w / self.len;
            let u = (w * p / self.len * expm1_ratio(z)).clamp(0.0, 1.0);
            return self.a0 + self.len * u;
        }
        let j = self.cum.partition_point(|&c| c <= w).clamp(1, TABLE_CELLS) - 1;
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let frac = (w - self.cum[j]) / (self.cum[j + 1] - self.cum[j]);
        let mut t = frac.clamp(0.0, 1.0);
        let (xa, xb) = (self.node(j), self.node(j + 1));
        for _ in 0..100 {
            let x = xa + (xb - xa) * t;
            let r = self.integral_to(x) - w;
            if r < 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            let d = (xb - xa) / self.eval(x);
            let mut nt = t - r / d;
            if !(nt > lo && nt < hi) {
                nt = 0.5 * (lo + hi);
            }
            if (nt - t).abs() <= 1e-16 || hi - lo <= 1e-16 {
                t = nt;
                break;
            }
            t = nt;
        }
        xa + (xb - xa) * t
    }

    fn node(&self, j: usize) -> f64 {
        if j == TABLE_CELLS {
            self.a0 + self.len
        } else {
            self.a0 + self.len * j as f64 / TABLE_CELLS as f64
        }
    }

    fn build(a0: f64, len: f64, shape: Shape) -> Result<Self> {
        let mut s = SeedFn {
            a0,
            len,
            shape,
            cum: vec![0.0; TABLE_CELLS + 1],
        };
        if s.affine_pq().is_none() {
            let mut acc = 0.0;
            for j in 0..TABLE_CELLS {
                let (xa, xb) = (s.node(j), s.node(j + 1));
                acc += quad::integrate(&|t| 1.0 / s.eval(t), xa, xb, 1e-15 * (xb - xa).abs());
                s.cum[j + 1] = acc;
            }
        } else {
            for j in 1..=TABLE_CELLS {
                s.cum[j] = s.integral_to(s.node(j));
            }
        }
        let total = s.travel_time();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::Normalization(format!(
                "1/v is not integrable on the seed interval [{}, {}]",
                a0,
                a0 + len
            )));
        }
        Ok(s)
    }
}

fn ordered(a: f64, b: f64) -> (f64, f64) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

fn horner(c: &[f64], u: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * u + ci)
}

fn ln1p_ratio(z: f64) -> f64 {
    if z == 0.0 {
        1.0
    } else {
        z.ln_1p() / z
    }
}

fn expm1_ratio(z: f64) -> f64 {
    if z == 0.0 {
        1.0
    } else {
        z.exp_m1() / z
    }
}

/// Turn a seed specification into a seed function on `[a0, a1]` with `a1 = T(a0)`.
pub(crate) fn resolve(spec: &SeedSpec, map: &MonotoneMap, a0: f64, a1: f64, direction: i8) -> Result<SeedFn> {
    let len = a1 - a0;
    let dir = direction as f64;
    if !(len * dir > 0.0) {
        return Err(Error::DegenerateOrbit(format!("seed interval [{a0}, {a1}] has the wrong orientation")));
    }
    let tp = map.derivative(a0);
    let default_v0 = dir * len.abs();
    let shape = match spec.kind {
        SeedKind::Constant => {
            if (tp - 1.0).abs() > COMPAT_TOL {
                return Err(Error::SeedCompatibility(format!(
                    "a constant seed needs T'(alpha_0) = 1, found {tp}"
                )));
            }
            Shape::Poly(vec![spec.values.first().copied().unwrap_or(default_v0)])
        }
        SeedKind::Affine => {
            let v0 = spec.values.first().copied().unwrap_or(default_v0);
            let v1 = tp * v0;
            if let Some(&given) = spec.values.get(1) {
                if (given - v1).abs() > COMPAT_TOL * given.abs().max(v1.abs()) {
                    return Err(Error::SeedCompatibility(format!(
                        "v(alpha_1) = {given} but T'(alpha_0) v(alpha_0) = {v1}"
                    )));
                }
            }
            Shape::Poly(vec![v0, v1 - v0])
        }
        SeedKind::HermiteCk => Shape::Poly(hermite_coeffs(spec, map, a0, len, default_v0)?),
        SeedKind::Profile => {
            let f = spec
                .profile
                .clone()
                .ok_or_else(|| Error::SeedCompatibility("profile seed without a closure".into()))?;
            let (s0, s1) = (f(a0), f(a1));
            if (s1 - tp * s0).abs() > 1e-8 * s1.abs().max((tp * s0).abs()) {
                return Err(Error::SeedCompatibility(format!(
                    "v(alpha_1) = {s1} but T'(alpha_0) v(alpha_0) = {}",
                    tp * s0
                )));
            }
            Shape::Profile(f)
        }
    };
    check_sign(&SeedFn { a0, len, shape: shape.clone(), cum: Vec::new() }, dir)?;
    let seed = SeedFn::build(a0, len, shape)?;
    Ok(seed)
}

fn check_sign(seed: &SeedFn, dir: f64) -> Result<()> {
    for k in 0..SIGN_SAMPLES {
        let x = seed.a0 + seed.len * k as f64 / (SIGN_SAMPLES - 1) as f64;
        let v = seed.eval(x);
        if !(v * dir > 0.0) {
            return Err(Error::SeedSign(format!(
                "seed takes the value {v} at x = {x}, expected sign {dir}"
            )));
        }
    }
    Ok(())
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Derivatives of `v` at `alpha_1` implied by `v(T(x)) = T'(x) v(x)` and the
/// derivatives `d` of `v` at `alpha_0`. `jet[j]` is `T^{(j+1)}(alpha_0)`.
pub(crate) fn propagate_derivatives(d: &[f64], jet: &[f64]) -> Vec<f64> {
    let k = d.len() - 1;
    let w: Vec<f64> = (0..=k)
        .map(|n| (0..=n).map(|j| binom(n, j) * jet[j] * d[n - j]).sum())
        .collect();
    let t1 = jet[0];
    let t2 = jet.get(1).copied().unwrap_or(0.0);
    let t3 = jet.get(2).copied().unwrap_or(0.0);
    let mut e = vec![0.0; k + 1];
    e[0] = w[0];
    if k >= 1 {
        e[1] = w[1] / t1;
    }
    if k >= 2 {
        e[2] = (w[2] - e[1] * t2) / (t1 * t1);
    }
    if k >= 3 {
        e[3] = (w[3] - 3.0 * e[2] * t1 * t2 - e[1] * t3) / (t1 * t1 * t1);
    }
    e
}

fn hermite_coeffs(spec: &SeedSpec, map: &MonotoneMap, a0: f64, len: f64, default_v0: f64) -> Result<Vec<f64>> {
    let k = spec.order_k;
    if k > MAX_HERMITE_ORDER {
        return Err(Error::Precondition(format!(
            "hermite seeds support order_k <= {MAX_HERMITE_ORDER}, got {k}"
        )));
    }
    let jet = map.derivative_jet(a0, k, len.abs());
    let tp = jet[0];
    let mut d = vec![0.0; k + 1];
    d[0] = spec.values.first().copied().unwrap_or(default_v0);
    if k >= 1 {
        d[1] = (tp - 1.0) * d[0] / len;
    }
    for (i, &v) in spec.values.iter().enumerate().skip(1).take(k) {
        d[i] = v;
    }
    let e = propagate_derivatives(&d, &jet);
    // Derivatives in u and the unknown upper coefficients.
    let n = 2 * k + 2;
    let mut c = vec![0.0; n];
    let mut fact = 1.0;
    for i in 0..=k {
        if i > 0 {
            fact *= i as f64;
        }
        c[i] = d[i] * len.powi(i as i32) / fact;
    }
    let m = k + 1;
    let mut a = vec![vec![0.0; m + 1]; m];
    for (i, row) in a.iter_mut().enumerate() {
        let mut rhs = e[i] * len.powi(i as i32);
        for (p, &cp) in c.iter().enumerate().take(m) {
            rhs -= cp * falling(p, i);
        }
        for (col, slot) in row.iter_mut().take(m).enumerate() {
            *slot = falling(m + col, i);
        }
        row[m] = rhs;
    }
    let sol = gauss_solve(a);
    c[m..].copy_from_slice(&sol);
    Ok(c)
}

/// `p! / (p - i)!`, the `i`-th derivative factor of `u^p` at `u = 1`.
fn falling(p: usize, i: usize) -> f64 {
    if i > p {
        0.0
    } else {
        (0..i).fold(1.0, |acc, j| acc * (p - j) as f64)
    }
}

fn gauss_solve(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..=n {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (a[r][n] - s) / a[r][r];
    }
    x
}
