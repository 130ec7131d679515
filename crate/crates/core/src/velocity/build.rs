use rayon::prelude::*;

use super::seed::{self, SeedSpec};
use super::{BuildOptions, Piece, VelocityField1D};
use crate::error::{Error, Result};
use crate::map::{build_orbit_grid, find_fixed_points, FixedComponent, FixedPointPartition, MonotoneMap, MovingInterval};

const SIGN_CHECK_SAMPLES: usize = 257;

/// Starting point of the orbit on a moving interval.
///
/// The free end upstream is used when there is one; otherwise the preimage of the
/// free end downstream; otherwise the midpoint.
pub(crate) fn seed_point(map: &MonotoneMap, iv: &MovingInterval) -> f64 {
    let (up, up_fixed, down, down_fixed) = if iv.direction > 0 {
        (iv.lo, iv.lo_fixed, iv.hi, iv.hi_fixed)
    } else {
        (iv.hi, iv.hi_fixed, iv.lo, iv.lo_fixed)
    };
    if !up_fixed {
        up
    } else if !down_fixed {
        map.inverse(down)
    } else {
        0.5 * (iv.lo + iv.hi)
    }
}

fn build_piece(map: &MonotoneMap, iv: MovingInterval, spec: &SeedSpec, opts: &BuildOptions) -> Result<Piece> {
    let x0 = seed_point(map, &iv);
    let grid = build_orbit_grid(map, iv, x0, opts.stop_for(map))?;
    let (a0, a1) = grid.seed_interval();
    let seed = seed::resolve(spec, map, a0, a1, iv.direction)?;
    Ok(Piece::new(map, iv, grid, spec.clone(), seed, opts.normalize, opts.tol_indeterminate))
}

/// Field for an arbitrary partition: zero on the fixed set, one seeded piece per moving interval.
///
/// `seeds` holds one spec per moving interval, or a single spec used for all of them.
pub fn build_general(
    map: &MonotoneMap,
    partition: &FixedPointPartition,
    seeds: &[SeedSpec],
    opts: &BuildOptions,
) -> Result<VelocityField1D> {
    let ivs = &partition.moving_intervals;
    let spec_for = |i: usize| -> Result<&SeedSpec> {
        match seeds.len() {
            1 => Ok(&seeds[0]),
            n if n == ivs.len() => Ok(&seeds[i]),
            n => Err(Error::Precondition(format!(
                "{n} seeds given for {} moving intervals",
                ivs.len()
            ))),
        }
    };
    if seeds.is_empty() && !ivs.is_empty() {
        return Err(Error::Precondition("no seed given".into()));
    }
    let pieces = ivs
        .par_iter()
        .enumerate()
        .map(|(i, iv)| build_piece(map, *iv, spec_for(i)?, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(VelocityField1D::assemble(map, partition.clone(), pieces, *opts))
}

/// Field for a map without fixed points.
pub fn build_no_fixed_point(map: &MonotoneMap, seed: &SeedSpec, opts: &BuildOptions) -> Result<VelocityField1D> {
    let partition = find_fixed_points(map, opts.tol_fp_for(map));
    if let Some(c) = partition.fixed_set.first() {
        return Err(Error::Precondition(format!("the map has a fixed point at {}", c.lo)));
    }
    build_general(map, &partition, std::slice::from_ref(seed), opts)
}

/// Field for a map whose only fixed point is `fp`; pieces on both sides of `fp` are built.
pub fn build_one_fixed_point(map: &MonotoneMap, seed: &SeedSpec, fp: f64, opts: &BuildOptions) -> Result<VelocityField1D> {
    let tol = opts.tol_fp_for(map);
    let (a, b) = map.domain();
    if !(fp >= a && fp <= b) || (map.forward(fp) - fp).abs() > tol {
        return Err(Error::Precondition(format!("{fp} is not a fixed point of the map")));
    }
    let partition = FixedPointPartition::from_components(
        map,
        vec![FixedComponent {
            lo: fp,
            hi: fp,
            unresolved: false,
        }],
        tol,
    );
    if partition.fixed_set.len() != 1 {
        return Err(Error::Precondition("the map has fixed points other than the one given".into()));
    }
    for iv in &partition.moving_intervals {
        for k in 1..SIGN_CHECK_SAMPLES {
            let x = iv.lo + (iv.hi - iv.lo) * k as f64 / SIGN_CHECK_SAMPLES as f64;
            if (map.forward(x) - x) * f64::from(iv.direction) < -tol {
                return Err(Error::Precondition(format!(
                    "T(x) - x changes sign near x = {x}: the map has another fixed point"
                )));
            }
        }
    }
    build_general(map, &partition, std::slice::from_ref(seed), opts)
}

/// Field for a map with exactly two fixed points bounding a single moving interval.
pub fn build_two_fixed_points(map: &MonotoneMap, seed: &SeedSpec, opts: &BuildOptions) -> Result<VelocityField1D> {
    let partition = find_fixed_points(map, opts.tol_fp_for(map));
    match partition.moving_intervals.as_slice() {
        [] => Err(Error::Precondition("the map has no moving interval".into())),
        [iv] if iv.lo_fixed && iv.hi_fixed && partition.fixed_set.len() == 2 => {
            build_general(map, &partition, std::slice::from_ref(seed), opts)
        }
        [_] => Err(Error::Precondition(
            "the moving interval is not bounded by two fixed points".into(),
        )),
        ivs => Err(Error::Precondition(format!(
            "the map has interior fixed points ({} moving intervals)",
            ivs.len()
        ))),
    }
}

/// Rescale every piece so that the travel time over one orbit step is 1.
pub fn time_normalize(field: &VelocityField1D, map: &MonotoneMap) -> Result<VelocityField1D> {
    if field.map().source() != map.source() || field.map().target() != map.target() {
        return Err(Error::Precondition("the field was built for a different map".into()));
    }
    let pieces = field
        .pieces()
        .iter()
        .map(|p| {
            let raw = p.seed.travel_time();
            if !(raw.is_finite() && raw > 0.0) {
                return Err(Error::Normalization(format!(
                    "1/v is not integrable on the seed interval {:?}",
                    p.seed_interval()
                )));
            }
            Ok(p.rescaled(raw))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(field.with_pieces(pieces))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::Measure1D;
    use crate::map::compute_monotone_map;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn ex51() -> MonotoneMap {
        compute_monotone_map(&Measure1D::uniform(1.0, 2.0).unwrap(), &Measure1D::uniform(0.0, 3.0).unwrap())
    }

    #[test]
    fn translation_gives_unit_speed() {
        let t = MonotoneMap::affine(1.0, 1.0, (0.0, 1.0)).unwrap();
        let raw = BuildOptions {
            normalize: false,
            ..Default::default()
        };
        let f = build_no_fixed_point(&t, &SeedSpec::constant(Some(2.5)), &raw).unwrap();
        assert!((f.eval(0.5).unwrap() - 2.5).abs() < 1e-15);
        let g = time_normalize(&f, &t).unwrap();
        for k in 0..=20 {
            let x = k as f64 / 10.0;
            assert!((g.eval(x).unwrap() - 1.0).abs() < 1e-14, "{x}");
        }
    }

    #[test]
    fn contraction_affine_class_is_linear() {
        // T(x) = x / a + b with a = 1/2, b = 1 on [1, 2]; fixed point a b / (a - 1) = -1.
        let (a, b) = (0.5f64, 1.0);
        let t = MonotoneMap::affine(1.0 / a, b, (1.0, 2.0)).unwrap();
        let f = build_no_fixed_point(&t, &SeedSpec::affine(), &BuildOptions::default()).unwrap();
        let xs = a * b / (a - 1.0);
        let c = a.ln().abs();
        let (lo, hi) = f.domain();
        for k in 0..=50 {
            let x = lo + (hi - lo) * k as f64 / 50.0;
            assert!((f.eval(x).unwrap() - c * (x - xs)).abs() < 1e-12, "{x}");
        }
    }

    #[test]
    fn one_fixed_point_reproduces_log3_field() {
        let t = ex51();
        let seed = SeedSpec::profile(Arc::new(|x| (x - 1.5) * 3f64.ln()));
        let f = build_one_fixed_point(&t, &seed, 1.5, &BuildOptions::default()).unwrap();
        for k in 0..=300 {
            let x = k as f64 / 100.0;
            let expect = (x - 1.5) * 3f64.ln();
            assert!((f.eval(x).unwrap() - expect).abs() < 1e-12 * (1.0 + expect.abs()), "{x}");
        }
        assert!(!f.has_indeterminate_fixed_point());
        let g = build_general(&t, &find_fixed_points(&t, 3e-10), &[seed], &BuildOptions::default()).unwrap();
        for k in 0..=300 {
            let x = k as f64 / 100.0;
            assert_eq!(f.eval(x).unwrap(), g.eval(x).unwrap());
        }
    }

    #[test]
    fn raw_profile_is_normalized_by_log3() {
        let t = ex51();
        let raw = BuildOptions {
            normalize: false,
            ..Default::default()
        };
        let f = build_one_fixed_point(&t, &SeedSpec::profile(Arc::new(|x| x - 1.5)), 1.5, &raw).unwrap();
        let g = time_normalize(&f, &t).unwrap();
        for x in [0.0, 0.7, 1.2, 2.0, 2.9] {
            assert!((g.eval(x).unwrap() - (x - 1.5) * 3f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn doubling_the_seed_changes_nothing_after_normalization() {
        let t = ex51();
        let opts = BuildOptions::default();
        // The modulation is invariant under x -> 3x - 3, so the seed is compatible.
        let s = |x: f64| (x - 1.5) * (1.0 + 0.1 * (2.0 * PI * (x - 1.5).abs().log(3.0)).sin());
        let f1 = build_one_fixed_point(&t, &SeedSpec::profile(Arc::new(s)), 1.5, &opts).unwrap();
        let f2 = build_one_fixed_point(&t, &SeedSpec::profile(Arc::new(move |x| 2.0 * s(x))), 1.5, &opts).unwrap();
        assert!((f1.eval(1.7).unwrap() - 0.2 * 3f64.ln()).abs() > 1e-3);
        for x in [0.1, 0.7, 1.2, 1.7, 2.4, 2.9] {
            let (a, b) = (f1.eval(x).unwrap(), f2.eval(x).unwrap());
            assert!((a - b).abs() <= 1e-13 * a.abs().max(1.0), "{x}: {a} vs {b}");
        }
    }

    #[test]
    fn gaussian_field_is_affine() {
        let t = compute_monotone_map(&Measure1D::gaussian(0.0, 1.0).unwrap(), &Measure1D::gaussian(1.0, 2.0).unwrap());
        let f = build_one_fixed_point(&t, &SeedSpec::affine(), -1.0, &BuildOptions::default()).unwrap();
        for x in [-6.0, -3.0, -1.5, -0.5, 0.0, 2.0, 5.0] {
            let expect = (x + 1.0) * 2f64.ln();
            assert!((f.eval(x).unwrap() - expect).abs() < 1e-9 * (1.0 + expect.abs()), "{x}");
        }
        assert_eq!(f.eval(-1.0).unwrap(), 0.0);
    }

    #[test]
    fn two_fixed_points() {
        let t = MonotoneMap::explicit(
            (0.0, 1.0),
            Arc::new(|x: f64| x - x * (1.0 - x) / 4.0),
            Arc::new(|x: f64| 1.0 - (1.0 - 2.0 * x) / 4.0),
            None,
        )
        .unwrap();
        let f = build_two_fixed_points(&t, &SeedSpec::affine(), &BuildOptions::default()).unwrap();
        assert_eq!(f.eval(0.0).unwrap(), 0.0);
        assert_eq!(f.eval(1.0).unwrap(), 0.0);
        for k in 1..100 {
            assert!(f.eval(k as f64 / 100.0).unwrap() < 0.0);
        }
        let xs = f.residual_samples(200);
        assert!(xs.len() > 150);
        assert!(f.julia_residual(&xs) < 1e-8);
        assert!(f.time_residual(&xs[..20]) < 1e-6);

        let id = MonotoneMap::identity(0.0, 1.0).unwrap();
        assert!(matches!(
            build_two_fixed_points(&id, &SeedSpec::affine(), &BuildOptions::default()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn identity_gives_zero_field() {
        let id = MonotoneMap::identity(0.0, 1.0).unwrap();
        let p = find_fixed_points(&id, 1e-10);
        let f = build_general(&id, &p, &[SeedSpec::affine()], &BuildOptions::default()).unwrap();
        assert!(f.pieces().is_empty());
        assert_eq!(f.eval(0.3).unwrap(), 0.0);
        assert!(f.eval(1.5).is_err());
    }

    #[test]
    fn wrong_preconditions() {
        assert!(matches!(
            build_no_fixed_point(&ex51(), &SeedSpec::affine(), &BuildOptions::default()),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            build_one_fixed_point(&ex51(), &SeedSpec::affine(), 1.0, &BuildOptions::default()),
            Err(Error::Precondition(_))
        ));
    }
}
