//! Randomized invariants over families of transport problems.

use autoflow::{
    assemble_field, compute_monotone_map, decompose, flow, BuildOptions, Measure1D, MeasureND, MeasureNDSpec,
    MonotoneMap, SeedSpec, VelocityField1D,
};
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[derive(Debug, Clone)]
enum Problem {
    Gaussian { m0: f64, s0: f64, m1: f64, s1: f64 },
    Uniform { a: f64, w: f64 },
    Ramp { p: f64, q: f64 },
}

impl Problem {
    fn measures(&self) -> (Measure1D, Measure1D) {
        match *self {
            Problem::Gaussian { m0, s0, m1, s1 } => (Measure1D::gaussian(m0, s0).unwrap(), Measure1D::gaussian(m1, s1).unwrap()),
            Problem::Uniform { a, w } => (Measure1D::uniform(0.0, 1.0).unwrap(), Measure1D::uniform(a, a + w).unwrap()),
            Problem::Ramp { p, q } => (
                Measure1D::uniform(0.0, 2.0).unwrap(),
                Measure1D::piecewise(vec![0.0, 3.0], vec![p, q]).unwrap(),
            ),
        }
    }

    fn map(&self) -> MonotoneMap {
        let (a, b) = self.measures();
        compute_monotone_map(&a, &b)
    }

    fn field(&self, seed: &SeedSpec) -> VelocityField1D {
        let map = self.map();
        let opts = BuildOptions::default();
        let partition = autoflow::find_fixed_points(&map, opts.tol_fp_for(&map));
        autoflow::build_general(&map, &partition, std::slice::from_ref(seed), &opts).unwrap()
    }
}

fn problem() -> impl Strategy<Value = Problem> {
    prop_oneof![
        (-1.0f64..1.0, 0.5f64..2.0, -1.0f64..1.0, 0.5f64..2.0)
            .prop_filter("distinct spreads", |(_, s0, _, s1)| (s0 - s1).abs() > 0.1)
            .prop_map(|(m0, s0, m1, s1)| Problem::Gaussian { m0, s0, m1, s1 }),
        (-0.5f64..0.5, 0.3f64..2.0)
            .prop_filter("not the identity", |(a, w)| a.abs() > 0.05 || (w - 1.0).abs() > 0.05)
            .prop_map(|(a, w)| Problem::Uniform { a, w }),
        (0.2f64..2.0, 0.2f64..2.0).prop_map(|(p, q)| Problem::Ramp { p, q }),
    ]
}

/// Interior of the source window, away from the ends by `margin` of its width.
fn interior(m: &MonotoneMap, u: f64, margin: f64) -> f64 {
    let (a, b) = m.source();
    a + (b - a) * (margin + (1.0 - 2.0 * margin) * u)
}

fn in_any_zone(f: &VelocityField1D, x: f64) -> bool {
    f.zones().any(|z| z.contains(x))
}

/// One-sided value and slope at `x` from points on the side `sign` (quadratic extrapolation).
fn one_sided(f: &VelocityField1D, x: f64, h: f64, sign: f64) -> (f64, f64) {
    let v = |k: f64| f.eval(x + sign * k * h).unwrap();
    let (v1, v2, v3) = (v(1.0), v(2.0), v(3.0));
    let v0 = 3.0 * v1 - 3.0 * v2 + v3;
    let slope = sign * (-3.0 * v0 + 4.0 * v1 - v2) / (2.0 * h);
    (v0, slope)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn map_is_monotone_with_consistent_inverse(p in problem(), us in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 64)) {
        let map = p.map();
        for (u1, u2) in us {
            let (x1, x2) = (interior(&map, u1.min(u2), 0.01), interior(&map, u1.max(u2), 0.01));
            prop_assert!(map.forward(x1) <= map.forward(x2));
            let back = map.inverse(map.forward(x1));
            prop_assert!((back - x1).abs() <= 1e-8 * map.width(), "{x1} -> {back}");
        }
    }

    #[test]
    fn orbit_anchors_are_exact(p in problem()) {
        let map = p.map();
        let field = p.field(&SeedSpec::affine());
        for piece in field.pieces() {
            for w in piece.grid.forward.windows(2).take(200) {
                prop_assert!((map.forward(w[0]) - w[1]).abs() <= 1e-12 * map.width());
            }
            for w in piece.grid.backward.windows(2).take(200) {
                prop_assert!((map.forward(w[1]) - w[0]).abs() <= 1e-9 * map.width());
            }
        }
    }

    #[test]
    fn julia_relation_holds(p in problem()) {
        let field = p.field(&SeedSpec::affine());
        let xs = field.residual_samples(256);
        prop_assert!(field.julia_residual(&xs) <= 1e-8);
    }

    #[test]
    fn time_one_map_ignores_the_seed(p in problem(), us in prop::collection::vec(0.0f64..1.0, 32)) {
        let map = p.map();
        let f1 = p.field(&SeedSpec::affine());
        let f2 = p.field(&SeedSpec::hermite(1));
        for u in us {
            let x = interior(&map, u, 0.01);
            if in_any_zone(&f1, x) || in_any_zone(&f2, x) {
                continue;
            }
            let (y1, y2) = (flow(&f1, 1.0, x).unwrap(), flow(&f2, 1.0, x).unwrap());
            prop_assert!((y1 - y2).abs() <= 1e-6 * map.width(), "{x}: {y1} vs {y2}");
            prop_assert!((y1 - map.forward(x)).abs() <= 1e-6 * map.width());
        }
    }

    #[test]
    fn speed_decays_toward_fixed_ends(m0 in -0.5f64..0.5, s0 in 0.5f64..2.0, m1 in -0.5f64..0.5, s1 in 0.5f64..2.0) {
        prop_assume!((s0 - s1).abs() > 0.3);
        let p = Problem::Gaussian { m0, s0, m1, s1 };
        let field = p.field(&SeedSpec::affine());
        let mut fixed_ends = 0;
        for piece in field.pieces() {
            let iv = piece.interval;
            // Forward iterates approach the end the interval moves toward.
            let toward_fixed_forward = match (iv.lo_fixed, iv.hi_fixed) {
                (false, false) => continue,
                (true, false) => iv.direction < 0,
                (false, true) => iv.direction > 0,
                (true, true) => unreachable!("an affine map has one fixed point"),
            };
            fixed_ends += 1;
            let speeds: Vec<f64> = if toward_fixed_forward {
                (0..piece.grid.forward.len() as i64).filter_map(|i| piece.anchor_velocity(i)).map(f64::abs).collect()
            } else {
                (0..piece.grid.backward.len() as i64).filter_map(|i| piece.anchor_velocity(-i)).map(f64::abs).collect()
            };
            prop_assert!(speeds.len() > 10);
            prop_assert!(speeds.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
            let last = *speeds.last().unwrap();
            prop_assert!(last <= 1e-3 * speeds[0], "{last} vs {}", speeds[0]);
        }
        prop_assume!(fixed_ends > 0);
    }

    #[test]
    fn seeds_are_smooth_across_anchors(p in 0.2f64..2.0, q in 0.2f64..2.0) {
        let problem = Problem::Ramp { p, q };
        for (k, seed) in [(0usize, SeedSpec::affine()), (1, SeedSpec::hermite(1))] {
            let field = problem.field(&seed);
            for piece in field.pieces() {
                let scale = piece.grid.forward.iter().map(|&x| field.eval(x).unwrap().abs()).fold(0.0, f64::max);
                for &a in piece.grid.forward.iter().skip(1).take(6).chain(piece.grid.backward.iter().take(6)) {
                    if !(piece.interval.lo < a && a < piece.interval.hi) || in_any_zone(&field, a) {
                        continue;
                    }
                    let h = 1e-6 * (a - piece.interval.lo).min(piece.interval.hi - a).min(1.0);
                    let (vl, dl) = one_sided(&field, a, h, -1.0);
                    let (vr, dr) = one_sided(&field, a, h, 1.0);
                    prop_assert!((vl - vr).abs() <= 1e-6 * scale, "value jump {} at {a}", vl - vr);
                    if k >= 1 {
                        prop_assert!((dl - dr).abs() <= 1e-6 * scale.max(1.0), "slope jump {} at {a}", dl - dr);
                    }
                }
            }
        }
    }

    #[test]
    fn flow_is_a_monotone_semigroup(p in problem(), samples in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..0.5, 0.0f64..0.5), 24)) {
        let map = p.map();
        let field = p.field(&SeedSpec::affine());
        let width = map.width();
        for (u1, u2, s, t) in samples {
            let (x1, x2) = (interior(&map, u1.min(u2), 0.01), interior(&map, u1.max(u2), 0.01));
            let composed = flow(&field, s, flow(&field, t, x1).unwrap()).unwrap();
            prop_assert!((composed - flow(&field, s + t, x1).unwrap()).abs() <= 1e-6 * width);
            prop_assert!(flow(&field, s + t, x1).unwrap() <= flow(&field, s + t, x2).unwrap());
        }
    }

    #[test]
    fn flow_stays_inside_its_moving_interval(p in problem(), us in prop::collection::vec((0.0f64..1.0, 0.0f64..=1.0), 24)) {
        let map = p.map();
        let field = p.field(&SeedSpec::affine());
        for (u, t) in us {
            let x = interior(&map, u, 0.01);
            let Some(piece) = field.piece_at(x) else { continue };
            let y = flow(&field, t, x).unwrap();
            let iv = piece.interval;
            let inside_lo = if iv.lo_fixed { y > iv.lo } else { y >= iv.lo };
            let inside_hi = if iv.hi_fixed { y < iv.hi } else { y <= iv.hi };
            prop_assert!(inside_lo && inside_hi, "{x} -> {y} leaves {iv:?}");
        }
    }
}

/// `T(r) = F1^{-1}(F0(r))` from the radial CDFs `P(|X| <= r)` in `R^d`.
fn radial_oracle(spec0: &MeasureNDSpec, spec1: &MeasureNDSpec, d: usize, r: f64) -> f64 {
    let cdf = |s: &MeasureNDSpec, r: f64| match s {
        MeasureNDSpec::Ball { radius, .. } => (r / radius).min(1.0).powi(d as i32),
        MeasureNDSpec::Gaussian { sd, .. } => ChiSquared::new(d as f64).unwrap().cdf((r / sd[0]).powi(2)),
        MeasureNDSpec::Box { .. } => unreachable!(),
    };
    let inv = |s: &MeasureNDSpec, p: f64| match s {
        MeasureNDSpec::Ball { radius, .. } => radius * p.powf(1.0 / d as f64),
        MeasureNDSpec::Gaussian { sd, .. } => sd[0] * ChiSquared::new(d as f64).unwrap().inverse_cdf(p).sqrt(),
        MeasureNDSpec::Box { .. } => unreachable!(),
    };
    inv(spec1, cdf(spec0, r))
}

fn radial_spec(gaussian: bool, d: usize, scale: f64) -> MeasureNDSpec {
    if gaussian {
        MeasureNDSpec::Gaussian { mean: vec![0.0; d], sd: vec![scale; d] }
    } else {
        MeasureNDSpec::Ball { center: vec![0.0; d], radius: scale }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn radial_map_matches_radial_cdfs(
        gaussian in any::<bool>(),
        d in 2usize..=3,
        s0 in 0.5f64..2.0,
        s1 in 0.5f64..2.0,
        pts in prop::collection::vec((prop::collection::vec(-1.0f64..1.0, 3), 0.05f64..0.95), 16),
    ) {
        prop_assume!((s0 - s1).abs() > 0.05);
        let (spec0, spec1) = (radial_spec(gaussian, d, s0), radial_spec(gaussian, d, s1));
        let (m0, m1) = (MeasureND::new(spec0.clone()).unwrap(), MeasureND::new(spec1.clone()).unwrap());
        let field = assemble_field(&decompose(&m0, &m1).unwrap(), &SeedSpec::affine(), &BuildOptions::default()).unwrap();
        for (dir, q) in pts {
            let dir = &dir[..d];
            let n = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n < 1e-3 {
                continue;
            }
            // Radii between the 5% and 95% radial quantiles of the source.
            let r = if gaussian {
                s0 * ChiSquared::new(d as f64).unwrap().inverse_cdf(q).sqrt()
            } else {
                s0 * q.powf(1.0 / d as f64)
            };
            let x: Vec<f64> = dir.iter().map(|c| c / n * r).collect();
            let y = field.flow(1.0, &x).unwrap();
            let ry = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            let expected = radial_oracle(&spec0, &spec1, d, r);
            prop_assert!((ry - expected).abs() <= 1e-6 * expected, "r {r}: {ry} vs {expected}");
            let cos = y.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() / (ry * r);
            prop_assert!((cos - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn parallel_rays_conserve_mass_and_confine_flow(
        lo in -1.0f64..1.0,
        w0 in 0.5f64..2.0,
        shift in -1.0f64..1.0,
        w1 in 0.5f64..2.0,
        cross in 0.5f64..2.0,
        pts in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 32),
    ) {
        let m0 = MeasureND::new(MeasureNDSpec::Box { lo: vec![0.0, lo], hi: vec![cross, lo + w0] }).unwrap();
        let m1 = MeasureND::new(MeasureNDSpec::Box { lo: vec![0.0, lo + shift], hi: vec![cross, lo + shift + w1] }).unwrap();
        let family = decompose(&m0, &m1).unwrap();
        let field = assemble_field(&family, &SeedSpec::affine(), &BuildOptions::default()).unwrap();
        for (u, v) in pts {
            let x = [cross * u, lo + w0 * (0.01 + 0.98 * v)];
            let (ray, _) = family.locate(&x).unwrap();
            let (a, b) = family.ray_mass(&ray);
            prop_assert!((a - b).abs() <= 1e-10);
            let y = field.flow(1.0, &x).unwrap();
            prop_assert!((y[0] - x[0]).abs() <= 1e-12);
            let expected = lo + shift + w1 * (x[1] - lo) / w0;
            prop_assert!((y[1] - expected).abs() <= 1e-8);
        }
    }
}
