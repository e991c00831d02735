//! Whole-model cost reports and model comparisons.

mod json;
mod render;

use std::collections::BTreeMap;

use num_rational::Ratio;
use thiserror::Error;

use crate::graph::{default_order, infer_shapes, ExecutionOrder, Graph, GraphError, OpKind};
use crate::hwprofile::{estimate_energy, estimate_time, HwProfile, OpClass, ProfileError};
use crate::liveness::{
    check_fit, memory_footprint, min_peak_order, FitVerdict, FootprintReport, LivenessConfig,
    LivenessError, DEFAULT_ORDER_LIMIT,
};
use crate::metrics::{LayerMetrics, MetricsError, OpsConvention};
use crate::scalar::Scalar;

pub use json::Json;
pub use render::{render, Format, Render};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalyzeError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Liveness(#[from] LivenessError),
    #[error("profile lookup failed for {}", describe_profile_errors(.0))]
    Profile(Vec<(String, ProfileError)>),
}

fn describe_profile_errors(errors: &[(String, ProfileError)]) -> String {
    errors
        .iter()
        .map(|(node, e)| format!("node `{node}`: {e}"))
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("comparison needs at least 2 reports, got {0}")]
    TooFewReports(usize),
    #[error("report `{model}` targets `{found}`, expected `{expected}`")]
    TargetMismatch {
        model: String,
        expected: String,
        found: String,
    },
    #[error("unknown format `{0}` (expected table, json, csv or svg)")]
    UnknownFormat(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OrderPolicy {
    /// Lexicographic topological order.
    #[default]
    Default,
    /// Exhaustive minimum-peak order, refusing graphs with more than `limit`
    /// orders.
    MinPeak { limit: usize },
}

impl OrderPolicy {
    pub fn min_peak() -> Self {
        OrderPolicy::MinPeak {
            limit: DEFAULT_ORDER_LIMIT,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            OrderPolicy::Default => "default",
            OrderPolicy::MinPeak { .. } => "min-peak",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AnalyzeOptions {
    pub order: OrderPolicy,
    pub liveness: LivenessConfig,
    pub ops: OpsConvention,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerRow<T> {
    pub name: String,
    pub kind: OpKind,
    pub class: OpClass,
    pub macs: u64,
    pub ops: u64,
    pub params_bytes: u64,
    pub out_bytes: u64,
    pub work_per_output: Ratio<u64>,
    pub est_time_s: T,
    pub est_energy_j: T,
    pub time_share: T,
    pub energy_share: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Totals<T> {
    pub macs: u64,
    pub ops: u64,
    pub params: u64,
    pub params_bytes: u64,
    pub est_time_s: T,
    pub est_energy_j: T,
}

/// Aggregate of all layers of one operation class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassShare<T> {
    pub class: OpClass,
    pub nodes: usize,
    pub macs: u64,
    pub ops: u64,
    pub ops_share: T,
    pub est_time_s: T,
    pub time_share: T,
    pub est_energy_j: T,
    pub energy_share: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport<T> {
    pub model: String,
    pub target: String,
    /// Rows in execution order.
    pub rows: Vec<LayerRow<T>>,
    pub totals: Totals<T>,
    /// One entry per class present, in class order.
    pub distribution: Vec<ClassShare<T>>,
    pub footprint: FootprintReport<T>,
    pub fit: FitVerdict,
    pub order: ExecutionOrder,
    pub tool_version: String,
    pub options: AnalyzeOptions,
}

fn share<T: Scalar>(part: T, total: T) -> T {
    if total > T::zero() {
        part / total
    } else {
        T::zero()
    }
}

/// Runs the full cost model on `g` for target `p`. Layers execute serially,
/// so model time and energy are the sums over layers.
pub fn analyze<T: Scalar>(
    g: &Graph,
    p: &HwProfile<T>,
    opts: &AnalyzeOptions,
) -> Result<CostReport<T>, AnalyzeError> {
    let shapes = infer_shapes(g)?;
    let order = match opts.order {
        OrderPolicy::Default => default_order(g),
        OrderPolicy::MinPeak { limit } => min_peak_order(g, &shapes, limit, opts.liveness)?.0,
    };

    let mut rows = Vec::with_capacity(order.len());
    let mut lookup_errors = Vec::new();
    let mut params = 0;
    for name in &order {
        let node = g.node(name).expect("order comes from the graph");
        let m = LayerMetrics::compute(node, &shapes, opts.ops)?;
        params += m.params;
        let est = estimate_time(p, node, &m).and_then(|t| Ok((t, estimate_energy(p, node, &m)?)));
        let (time, energy) = match est {
            Ok(v) => v,
            Err(e) => {
                lookup_errors.push((node.name.clone(), e));
                continue;
            }
        };
        rows.push(LayerRow {
            name: node.name.clone(),
            kind: node.kind,
            class: OpClass::of(node.kind),
            macs: m.macs,
            ops: m.ops,
            params_bytes: m.params_bytes,
            out_bytes: m.out_bytes,
            work_per_output: m.work_per_output,
            est_time_s: time,
            est_energy_j: energy,
            time_share: T::zero(),
            energy_share: T::zero(),
        });
    }
    if !lookup_errors.is_empty() {
        return Err(AnalyzeError::Profile(lookup_errors));
    }

    let totals = Totals {
        macs: rows.iter().map(|r| r.macs).sum(),
        ops: rows.iter().map(|r| r.ops).sum(),
        params,
        params_bytes: rows.iter().map(|r| r.params_bytes).sum(),
        est_time_s: rows.iter().fold(T::zero(), |acc, r| acc + r.est_time_s),
        est_energy_j: rows.iter().fold(T::zero(), |acc, r| acc + r.est_energy_j),
    };
    for r in &mut rows {
        r.time_share = share(r.est_time_s, totals.est_time_s);
        r.energy_share = share(r.est_energy_j, totals.est_energy_j);
    }

    let mut by_class: BTreeMap<OpClass, ClassShare<T>> = BTreeMap::new();
    for r in &rows {
        let c = by_class.entry(r.class).or_insert_with(|| ClassShare {
            class: r.class,
            nodes: 0,
            macs: 0,
            ops: 0,
            ops_share: T::zero(),
            est_time_s: T::zero(),
            time_share: T::zero(),
            est_energy_j: T::zero(),
            energy_share: T::zero(),
        });
        c.nodes += 1;
        c.macs += r.macs;
        c.ops += r.ops;
        c.est_time_s = c.est_time_s + r.est_time_s;
        c.est_energy_j = c.est_energy_j + r.est_energy_j;
    }
    let distribution = by_class
        .into_values()
        .map(|mut c| {
            c.ops_share = share(T::from_count(c.ops), T::from_count(totals.ops));
            c.time_share = share(c.est_time_s, totals.est_time_s);
            c.energy_share = share(c.est_energy_j, totals.est_energy_j);
            c
        })
        .collect();

    let footprint = memory_footprint(g, &shapes, &order, opts.liveness)?;
    let fit = check_fit(&footprint, p);

    Ok(CostReport {
        model: g.name().to_string(),
        target: p.target_name().to_string(),
        rows,
        totals,
        distribution,
        footprint,
        fit,
        order,
        tool_version: TOOL_VERSION.to_string(),
        options: *opts,
    })
}

/// One model's line in a comparison. `norm_*` values are relative to the
/// first report; `None` when the anchor value is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow<T> {
    pub model: String,
    pub ops: u64,
    pub macs: u64,
    pub est_time_s: T,
    pub est_energy_j: T,
    pub total_bytes: u64,
    pub weights_bytes: u64,
    pub peak_activation_bytes: u64,
    pub norm_ops: Option<T>,
    pub norm_time: Option<T>,
    pub norm_energy: Option<T>,
    pub norm_footprint: Option<T>,
    /// Ops share per class present in the model.
    pub ops_distribution: Vec<(OpClass, T)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable<T> {
    pub target: String,
    pub rows: Vec<ComparisonRow<T>>,
}

fn normalized<T: Scalar>(value: T, anchor: T) -> Option<T> {
    if anchor == T::zero() {
        None
    } else {
        Some(value / anchor)
    }
}

/// Normalizes every report against the first one. All reports must come
/// from the same target.
pub fn compare<T: Scalar>(reports: &[CostReport<T>]) -> Result<ComparisonTable<T>, ReportError> {
    if reports.len() < 2 {
        return Err(ReportError::TooFewReports(reports.len()));
    }
    let anchor = &reports[0];
    if let Some(r) = reports.iter().find(|r| r.target != anchor.target) {
        return Err(ReportError::TargetMismatch {
            model: r.model.clone(),
            expected: anchor.target.clone(),
            found: r.target.clone(),
        });
    }
    let count = T::from_count;
    let rows = reports
        .iter()
        .map(|r| ComparisonRow {
            model: r.model.clone(),
            ops: r.totals.ops,
            macs: r.totals.macs,
            est_time_s: r.totals.est_time_s,
            est_energy_j: r.totals.est_energy_j,
            total_bytes: r.footprint.total_bytes,
            weights_bytes: r.footprint.weights_bytes,
            peak_activation_bytes: r.footprint.peak_activation_bytes,
            norm_ops: normalized(count(r.totals.ops), count(anchor.totals.ops)),
            norm_time: normalized(r.totals.est_time_s, anchor.totals.est_time_s),
            norm_energy: normalized(r.totals.est_energy_j, anchor.totals.est_energy_j),
            norm_footprint: normalized(
                count(r.footprint.total_bytes),
                count(anchor.footprint.total_bytes),
            ),
            ops_distribution: r
                .distribution
                .iter()
                .map(|c| (c.class, c.ops_share))
                .collect(),
        })
        .collect();
    Ok(ComparisonTable {
        target: anchor.target.clone(),
        rows,
    })
}
