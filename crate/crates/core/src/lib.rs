//! Autonomous flows that realise one-dimensional monotone transport maps.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod examples;
pub mod flow;
pub mod interp;
pub mod map;
pub mod measure;
pub mod pathology;
pub mod quad;
pub mod sudakov;
pub mod velocity;

pub use error::{Error, Result};
pub use map::{
    build_orbit_grid, compute_monotone_map, find_fixed_points, map_derivative, FixedComponent, FixedPointPartition,
    Location, MonotoneMap, MovingInterval, OrbitGrid, StopReason, StopRule,
};
pub use measure::{l1_distance, pushforward_by_map, wasserstein1, Measure1D, MeasureSpec};
pub use velocity::{
    approximate_lipschitz, build_general, build_no_fixed_point, build_one_fixed_point, build_two_fixed_points,
    time_normalize, BuildOptions, SeedKind, SeedSpec, VelocityField1D, Warning,
};
pub use flow::{
    flow, flow_derivative, osgood_table, push_measure, verify_transport, FlowMap, OsgoodRow, VerificationReport, VerifyOptions,
};
pub use examples::{Example, Smoothness};
pub use pathology::{
    build_counterexample, probe_non_integrability, probe_velocity_growth, Bump, CounterexampleMap, GrowthTable,
    IntegrabilityTable, Variant,
};
pub use sudakov::{
    assemble_field, decompose, verify_nd, MeasureND, MeasureNDSpec, NdReport, NdVerifyOptions, Ray, RayFamily, RayKind,
    VelocityFieldND,
};
