//! Static cost analysis of neural-network graphs for embedded targets.
//!
//! Given a model graph and a characterization profile of the target, the
//! analyzer estimates per-inference runtime and energy from per-class
//! throughput tables, and total memory footprint as weight bytes plus the
//! peak of concurrently live activation bytes along an execution order.
//!
//! Integer quantities (MACs, Ops, parameters, bytes) are exact. Rates,
//! times, energies and shares are generic over [`Scalar`] (`f32` or `f64`);
//! the aliases below fix them to `f64`.

pub mod graph;
pub mod hwprofile;
pub mod liveness;
pub mod metrics;
pub mod report;
mod scalar;

pub use graph::{
    all_topological_orders, default_order, infer_shapes, parse_model, to_model_json, DType,
    ExecutionOrder, Graph, GraphError, GraphInput, OpAttrs, OpKind, OpNode, Padding, ShapeMap,
    TensorInfo, TensorShape,
};
pub use hwprofile::{
    default_profile, estimate_energy, estimate_time, load_profile, load_profile_strict, throughput,
    OpClass, ProfileError, DEFAULT_PROFILE_CSV,
};
pub use liveness::{
    check_fit, live_set, memory_footprint, min_peak_order, order_peaks, peak_activation,
    FitVerdict, LivenessConfig, LivenessError, LivenessTrace, DEFAULT_ORDER_LIMIT,
};
pub use metrics::{LayerMetrics, MetricsError, OpsConvention};
pub use num_rational::Ratio;
pub use report::{
    analyze, compare, render, AnalyzeError, AnalyzeOptions, Format, OrderPolicy, Render,
    ReportError,
};
pub use scalar::Scalar;

pub type HwProfile = hwprofile::HwProfile<f64>;
pub type OpTypeProfile = hwprofile::OpTypeProfile<f64>;
pub type ThroughputKnot = hwprofile::ThroughputKnot<f64>;
pub type FootprintReport = liveness::FootprintReport<f64>;
pub type CostReport = report::CostReport<f64>;
pub type LayerRow = report::LayerRow<f64>;
pub type ComparisonTable = report::ComparisonTable<f64>;

pub type HwProfileF32 = hwprofile::HwProfile<f32>;
pub type CostReportF32 = report::CostReport<f32>;
