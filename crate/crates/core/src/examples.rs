//! Named transport problems with known structure.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::flow::{verify_transport, VerificationReport, VerifyOptions};
use crate::map::{compute_monotone_map, find_fixed_points, Func, MonotoneMap, StopRule};
use crate::measure::{pushforward_by_map, Measure1D};
use crate::velocity::{build_general, BuildOptions, SeedSpec, VelocityField1D};

pub const NAMES: [&str; 4] = ["affine", "gaussian", "bad-fixed-point", "accumulating"];

/// Orbit cap for the accumulating maps, whose fixed points near the cluster at 0
/// have `T'` within `1e-7` of 1 and converge too slowly for the default cap.
pub const ACCUMULATING_MAX_STEPS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothness {
    /// `T(x) = x + x^3 sin(pi/x) / 5`.
    C1,
    /// `T(x) = x + exp(-1/x) sin(pi/x) / 5`.
    CInf,
}

#[derive(Debug, Clone)]
pub struct Example {
    pub name: String,
    pub m0: Measure1D,
    pub m1: Measure1D,
    pub map: MonotoneMap,
    pub options: BuildOptions,
}

impl Example {
    /// `T(x) = alpha x + beta` on `uniform[1, 2]`.
    pub fn affine(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0) || !beta.is_finite() {
            return Err(Error::Domain(format!("affine example needs alpha > 0, got ({alpha}, {beta})")));
        }
        let m0 = Measure1D::uniform(1.0, 2.0)?;
        let m1 = Measure1D::affine_image(&m0, 1.0 / alpha, beta)?;
        Ok(Self::from_measures("affine", m0, m1))
    }

    pub fn gaussian(mean0: f64, sd0: f64, mean1: f64, sd1: f64) -> Result<Self> {
        let m0 = Measure1D::gaussian(mean0, sd0)?;
        let m1 = Measure1D::gaussian(mean1, sd1)?;
        Ok(Self::from_measures("gaussian", m0, m1))
    }

    /// Equal densities at the fixed point 0: `T^{-1}(y) = y - y^2/9`.
    pub fn bad_fixed_point() -> Result<Self> {
        let m0 = Measure1D::uniform(0.0, 2.0)?;
        let m1 = Measure1D::piecewise(vec![0.0, 3.0], vec![0.5, 1.0 / 6.0])?;
        Ok(Self::from_measures("bad-fixed-point", m0, m1))
    }

    /// Fixed points at `1/n` accumulating at 0, with `uniform[0, 1]` as source.
    pub fn accumulating(smoothness: Smoothness) -> Result<Self> {
        let (forward, derivative): (Func, Func) =
            match smoothness {
                Smoothness::C1 => (
                    Arc::new(|x: f64| if x > 0.0 { x + 0.2 * x.powi(3) * (PI / x).sin() } else { 0.0 }),
                    Arc::new(|x: f64| {
                        if x > 0.0 {
                            let a = PI / x;
                            1.0 + 0.2 * (3.0 * x * x * a.sin() - PI * x * a.cos())
                        } else {
                            1.0
                        }
                    }),
                ),
                Smoothness::CInf => (
                    Arc::new(|x: f64| if x > 0.0 { x + 0.2 * (-1.0 / x).exp() * (PI / x).sin() } else { 0.0 }),
                    Arc::new(|x: f64| {
                        if x > 0.0 {
                            let a = PI / x;
                            1.0 + 0.2 * (-1.0 / x).exp() / (x * x) * (a.sin() - PI * a.cos())
                        } else {
                            1.0
                        }
                    }),
                ),
            };
        let map = MonotoneMap::explicit((0.0, 1.0), forward, derivative, None)?;
        let m0 = Measure1D::uniform(0.0, 1.0)?;
        let m1 = pushforward_by_map(&m0, &map)?;
        let name = match smoothness {
            Smoothness::C1 => "accumulating",
            Smoothness::CInf => "accumulating-cinf",
        };
        let options = BuildOptions {
            stop: Some(StopRule {
                delta: crate::map::DELTA_ORBIT_REL * map.width(),
                max_steps: ACCUMULATING_MAX_STEPS,
            }),
            ..Default::default()
        };
        Ok(Example {
            name: name.into(),
            m0,
            m1,
            map,
            options,
        })
    }

    /// Example with default parameters.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "affine" => Self::affine(3.0, -3.0),
            "gaussian" => Self::gaussian(0.0, 1.0, 1.0, 2.0),
            "bad-fixed-point" => Self::bad_fixed_point(),
            "accumulating" => Self::accumulating(Smoothness::C1),
            "accumulating-cinf" => Self::accumulating(Smoothness::CInf),
            other => Err(Error::Parse(format!(
                "unknown example `{other}`; expected one of {}",
                NAMES.join(", ")
            ))),
        }
    }

    fn from_measures(name: &str, m0: Measure1D, m1: Measure1D) -> Self {
        let map = compute_monotone_map(&m0, &m1);
        Example {
            name: name.into(),
            m0,
            m1,
            map,
            options: BuildOptions::default(),
        }
    }

    /// Field over the detected partition, with one seed for every moving interval.
    pub fn build(&self, seed: &SeedSpec) -> Result<VelocityField1D> {
        self.build_with(seed, &self.options)
    }

    pub fn build_with(&self, seed: &SeedSpec, options: &BuildOptions) -> Result<VelocityField1D> {
        let partition = find_fixed_points(&self.map, options.tol_fp_for(&self.map));
        build_general(&self.map, &partition, std::slice::from_ref(seed), options)
    }

    pub fn verify(&self, field: &VelocityField1D, opts: &VerifyOptions) -> VerificationReport {
        verify_transport(field, &self.m0, &self.m1, opts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_names_resolve() {
        for name in NAMES {
            assert!(Example::by_name(name).is_ok(), "{name}");
        }
        assert!(matches!(Example::by_name("nope"), Err(Error::Parse(_))));
    }

    #[test]
    fn affine_example_map() {
        let ex = Example::affine(3.0, -3.0).unwrap();
        for k in 0..=10 {
            let x = 1.0 + k as f64 / 10.0;
            assert!((ex.map.forward(x) - (3.0 * x - 3.0)).abs() < 1e-13);
        }
    }

    #[test]
    fn accumulating_target_is_pushforward() {
        let ex = Example::accumulating(Smoothness::C1).unwrap();
        for x in [0.1, 0.37, 0.8] {
            assert!((ex.m1.cdf(ex.map.forward(x)) - x).abs() < 1e-12);
        }
    }
}
