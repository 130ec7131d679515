use serde::Serialize;

use super::{build_general, BuildOptions, SeedSpec, VelocityField1D};
use crate::error::{Error, Result};
use crate::map::{compute_monotone_map, find_fixed_points, MonotoneMap};
use crate::measure::{l1_distance, wasserstein1, Measure1D};

const SCAN_LEVELS: usize = 24;
const CERT_GRIDS: [usize; 3] = [1 << 12, 1 << 13, 1 << 14];
const CERT_AGREEMENT: f64 = 0.1;

/// Maximal difference quotients of `v` on three nested grids.
#[derive(Debug, Clone, Serialize)]
pub struct LipschitzCertificate {
    pub grids: Vec<usize>,
    pub quotients: Vec<f64>,
    pub passed: bool,
}

/// Result of the shift search: the perturbed target and the field that transports onto it.
#[derive(Debug, Clone)]
pub struct ApproxOutcome {
    pub lambda: f64,
    pub target: Measure1D,
    pub map: MonotoneMap,
    pub field: VelocityField1D,
    pub w1: f64,
    pub l1: f64,
    pub certificate: LipschitzCertificate,
}

/// Max over consecutive grid points of `|v(x_{k+1}) - v(x_k)| / h`, for each grid size.
pub fn lipschitz_certificate(field: &VelocityField1D) -> LipschitzCertificate {
    let (a, b) = field.domain();
    let quotients: Vec<f64> = CERT_GRIDS
        .iter()
        .map(|&n| {
            let h = (b - a) / n as f64;
            let vals: Vec<f64> = (0..=n)
                .map(|k| field.eval(if k == n { b } else { a + h * k as f64 }).unwrap_or(f64::NAN))
                .collect();
            vals.windows(2).map(|w| (w[1] - w[0]).abs() / h).fold(0.0, f64::max)
        })
        .collect();
    let hi = quotients.iter().cloned().fold(0.0, f64::max);
    let lo = quotients.iter().cloned().fold(f64::INFINITY, f64::min);
    let passed = hi.is_finite() && (hi == 0.0 || (hi - lo) <= CERT_AGREEMENT * hi);
    LipschitzCertificate {
        grids: CERT_GRIDS.to_vec(),
        quotients,
        passed,
    }
}

fn shifts(eps: f64) -> impl Iterator<Item = f64> {
    std::iter::once(0.0).chain((1..=SCAN_LEVELS).flat_map(move |k| {
        let l = eps / 2f64.powi(k as i32);
        [l, -l]
    }))
}

/// Search for a translate `m1(. + lambda)` of the target, within `eps` in both W1 and L1,
/// whose monotone map from `m0` has no indeterminate fixed point and a Lipschitz field.
pub fn approximate_lipschitz(m0: &Measure1D, m1: &Measure1D, eps: f64) -> Result<ApproxOutcome> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    let opts = BuildOptions::default();
    let mut tried = Vec::new();
    for lambda in shifts(eps) {
        let target = if lambda == 0.0 { m1.clone() } else { m1.translated(-lambda)? };
        let w1 = wasserstein1(m1, &target);
        let l1 = l1_distance(m1, &target);
        if !(w1 < eps && l1 < eps) {
            tried.push(format!("{lambda:e}: distance"));
            continue;
        }
        let map = compute_monotone_map(m0, &target);
        let partition = find_fixed_points(&map, opts.tol_fp_for(&map));
        let bad = partition
            .fixed_set
            .iter()
            .any(|c| c.unresolved || c.lo != c.hi || (map.derivative(c.lo) - 1.0).abs() <= opts.tol_indeterminate);
        if bad {
            tried.push(format!("{lambda:e}: indeterminate fixed point"));
            continue;
        }
        let field = match build_general(&map, &partition, &[SeedSpec::affine()], &opts) {
            Ok(f) => f,
            Err(e) => {
                tried.push(format!("{lambda:e}: {e}"));
                continue;
            }
        };
        let certificate = lipschitz_certificate(&field);
        if !certificate.passed {
            tried.push(format!("{lambda:e}: certificate {:?}", certificate.quotients));
            continue;
        }
        return Ok(ApproxOutcome {
            lambda,
            target,
            map,
            field,
            w1,
            l1,
            certificate,
        });
    }
    Err(Error::SearchFailure(format!(
        "no admissible shift among {} candidates ({})",
        tried.len(),
        tried.join("; ")
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_sequence() {
        let s: Vec<f64> = shifts(1.0).take(5).collect();
        assert_eq!(s, vec![0.0, 0.5, -0.5, 0.25, -0.25]);
    }

    #[test]
    fn good_problem_needs_no_shift() {
        let m0 = Measure1D::uniform(1.0, 2.0).unwrap();
        let m1 = Measure1D::uniform(0.0, 3.0).unwrap();
        let out = approximate_lipschitz(&m0, &m1, 1e-3).unwrap();
        assert_eq!(out.lambda, 0.0);
        assert_eq!(out.w1, 0.0);
        assert!(out.certificate.passed);
        for q in &out.certificate.quotients {
            assert!((q - 3f64.ln()).abs() < 1e-9);
        }
    }
}
