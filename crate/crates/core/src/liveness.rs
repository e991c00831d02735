//! Concurrent activation sets and total memory footprint.
//!
//! A tensor occupies memory from the step of its producer (step 0 for graph
//! inputs) through the step of its last consumer; graph outputs stay live to
//! the final step. Peak activation is the maximum, over steps, of the summed
//! bytes of live buffers, which assumes an ideal allocator that reuses dead
//! buffers immediately with no fragmentation or alignment padding.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::graph::{all_topological_orders, ExecutionOrder, Graph, GraphError, ShapeMap};
use crate::hwprofile::HwProfile;
use crate::metrics::{count_params, MetricsError};
use crate::scalar::Scalar;

/// Default cap on the number of orders [`min_peak_order`] will enumerate.
pub const DEFAULT_ORDER_LIMIT: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LivenessError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("step {step} is out of range for an order of {len} nodes")]
    StepOutOfRange { step: usize, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LivenessConfig {
    /// ReLU and Add write over their first input when that input has a single
    /// consuming node and is not a graph output.
    pub inplace: bool,
}

impl Default for LivenessConfig {
    fn default() -> Self {
        LivenessConfig { inplace: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiveStep {
    pub node: String,
    /// Live tensor names, sorted.
    pub live: Vec<String>,
    /// Bytes of the distinct buffers backing `live`.
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LivenessTrace {
    pub order: ExecutionOrder,
    pub steps: Vec<LiveStep>,
    pub peak_bytes: u64,
    /// Earliest step reaching the peak; `None` for a graph without nodes.
    pub peak_step: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FootprintReport<T> {
    pub weights_bytes: u64,
    pub peak_activation_bytes: u64,
    pub total_bytes: u64,
    /// `peak_activation / total`, zero for an empty footprint.
    pub activation_share: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitVerdict {
    pub flash_budget: u64,
    pub sram_budget: u64,
    /// Budget minus usage; negative when over budget.
    pub flash_margin: i64,
    pub sram_margin: i64,
}

impl FitVerdict {
    pub fn flash_ok(&self) -> bool {
        self.flash_margin >= 0
    }

    pub fn sram_ok(&self) -> bool {
        self.sram_margin >= 0
    }

    pub fn pass(&self) -> bool {
        self.flash_ok() && self.sram_ok()
    }
}

/// Per-tensor lifetime along one order.
struct Lifetimes<'g> {
    names: Vec<&'g str>,
    birth: Vec<usize>,
    death: Vec<usize>,
    /// Index of the tensor whose buffer this tensor occupies.
    buffer: Vec<usize>,
    bytes: Vec<u64>,
    order: Vec<usize>,
}

impl<'g> Lifetimes<'g> {
    fn build(
        g: &'g Graph,
        shapes: &ShapeMap,
        order: &[String],
        cfg: LivenessConfig,
    ) -> Result<Self, LivenessError> {
        let order = crate::graph::check_order(g, order)?;
        let names: Vec<&str> = g.tensor_names().collect();
        let n_inputs = g.inputs().len();
        let tensor_of_node = |n: usize| n_inputs + n;
        let index_of = |name: &str| names.iter().position(|&t| t == name).expect("validated");

        let mut bytes = Vec::with_capacity(names.len());
        for &t in &names {
            bytes.push(crate::metrics::activation_bytes(t, shapes)?);
        }

        let last = order.len().saturating_sub(1);
        let mut birth = vec![0; names.len()];
        let mut death = vec![0; names.len()];
        for (step, &n) in order.iter().enumerate() {
            birth[tensor_of_node(n)] = step;
            death[tensor_of_node(n)] = step;
        }
        for (step, &n) in order.iter().enumerate() {
            for t in &g.nodes()[n].inputs {
                let i = index_of(t);
                death[i] = death[i].max(step);
            }
        }
        for o in g.outputs() {
            death[index_of(o)] = last;
        }

        let mut buffer: Vec<usize> = (0..names.len()).collect();
        if cfg.inplace {
            let consumers = g.consumer_counts();
            for &n in &order {
                let node = &g.nodes()[n];
                if !node.kind.can_run_in_place() {
                    continue;
                }
                let src = node.inputs[0].as_str();
                if consumers[src] == 1 && !g.is_graph_output(src) {
                    let s = index_of(src);
                    buffer[tensor_of_node(n)] = buffer[s];
                }
            }
        }

        Ok(Lifetimes {
            names,
            birth,
            death,
            buffer,
            bytes,
            order,
        })
    }

    fn live_at(&self, step: usize) -> Vec<usize> {
        (0..self.names.len())
            .filter(|&t| self.birth[t] <= step && step <= self.death[t])
            .collect()
    }

    fn bytes_of(&self, live: &[usize]) -> u64 {
        let buffers: BTreeSet<usize> = live.iter().map(|&t| self.buffer[t]).collect();
        buffers.into_iter().map(|b| self.bytes[b]).sum()
    }

    fn sorted_names(&self, live: &[usize]) -> Vec<String> {
        let mut v: Vec<String> = live.iter().map(|&t| self.names[t].to_string()).collect();
        v.sort();
        v
    }
}

/// Tensors live while executing `order[step]`.
pub fn live_set(
    g: &Graph,
    shapes: &ShapeMap,
    order: &[String],
    step: usize,
    cfg: LivenessConfig,
) -> Result<BTreeSet<String>, LivenessError> {
    let lt = Lifetimes::build(g, shapes, order, cfg)?;
    if step >= lt.order.len() {
        return Err(LivenessError::StepOutOfRange {
            step,
            len: lt.order.len(),
        });
    }
    Ok(lt.sorted_names(&lt.live_at(step)).into_iter().collect())
}

pub fn peak_activation(
    g: &Graph,
    shapes: &ShapeMap,
    order: &[String],
    cfg: LivenessConfig,
) -> Result<LivenessTrace, LivenessError> {
    let lt = Lifetimes::build(g, shapes, order, cfg)?;
    let mut steps = Vec::with_capacity(lt.order.len());
    let mut peak_bytes = 0;
    let mut peak_step = None;
    for (step, &n) in lt.order.iter().enumerate() {
        let live = lt.live_at(step);
        let bytes = lt.bytes_of(&live);
        let node = g.nodes()[n].name.clone();
        if peak_step.is_none() || bytes > peak_bytes {
            peak_bytes = bytes;
            peak_step = Some(node.clone());
        }
        steps.push(LiveStep {
            node,
            live: lt.sorted_names(&live),
            bytes,
        });
    }
    Ok(LivenessTrace {
        order: order.to_vec(),
        steps,
        peak_bytes,
        peak_step,
    })
}

/// Peak activation of every topological order, in enumeration sequence.
pub fn order_peaks(
    g: &Graph,
    shapes: &ShapeMap,
    limit: usize,
    cfg: LivenessConfig,
) -> Result<Vec<(ExecutionOrder, u64)>, LivenessError> {
    all_topological_orders(g, limit)?
        .into_iter()
        .map(|order| {
            let peak = peak_activation(g, shapes, &order, cfg)?.peak_bytes;
            Ok((order, peak))
        })
        .collect()
}

/// Exhaustive search for the order with the smallest peak; the first such
/// order in enumeration sequence wins ties.
pub fn min_peak_order(
    g: &Graph,
    shapes: &ShapeMap,
    limit: usize,
    cfg: LivenessConfig,
) -> Result<(ExecutionOrder, u64), LivenessError> {
    let mut best: Option<(ExecutionOrder, u64)> = None;
    for (order, peak) in order_peaks(g, shapes, limit, cfg)? {
        if best.as_ref().is_none_or(|(_, b)| peak < *b) {
            best = Some((order, peak));
        }
    }
    Ok(best.expect("every graph has at least one (possibly empty) order"))
}

fn share<T: Scalar>(part: u64, total: u64) -> T {
    if total == 0 {
        T::zero()
    } else {
        T::from_count(part) / T::from_count(total)
    }
}

/// Weight bytes plus peak activation bytes along `order`.
pub fn memory_footprint<T: Scalar>(
    g: &Graph,
    shapes: &ShapeMap,
    order: &[String],
    cfg: LivenessConfig,
) -> Result<FootprintReport<T>, LivenessError> {
    let mut weights_bytes = 0;
    for node in g.nodes() {
        weights_bytes += count_params(node, shapes)?.1;
    }
    let peak = peak_activation(g, shapes, order, cfg)?.peak_bytes;
    Ok(footprint(weights_bytes, peak))
}

pub fn footprint<T: Scalar>(weights_bytes: u64, peak_activation_bytes: u64) -> FootprintReport<T> {
    let total_bytes = weights_bytes + peak_activation_bytes;
    FootprintReport {
        weights_bytes,
        peak_activation_bytes,
        total_bytes,
        activation_share: share(peak_activation_bytes, total_bytes),
    }
}

/// Weights must fit in flash and peak activations in SRAM (inclusive).
pub fn check_fit<T: Scalar, U>(f: &FootprintReport<T>, p: &HwProfile<U>) -> FitVerdict
where
    U: Scalar,
{
    let margin = |budget: u64, used: u64| budget as i64 - used as i64;
    FitVerdict {
        flash_budget: p.flash_budget(),
        sram_budget: p.sram_budget(),
        flash_margin: margin(p.flash_budget(), f.weights_bytes),
        sram_margin: margin(p.sram_budget(), f.peak_activation_bytes),
    }
}
