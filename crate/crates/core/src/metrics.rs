//! Per-layer work and size counts.
//!
//! MACs, Ops and parameters are exact integers. `work_per_output` is the
//! x-axis used to look up throughput: MACs per output element for MAC kinds,
//! primitive ops per output element for everything else.

use num_rational::Ratio;
use thiserror::Error;

use crate::graph::{OpKind, OpNode, ShapeMap, TensorInfo};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("node `{node}`: shape of tensor `{tensor}` is unresolved")]
    UnresolvedShape { node: String, tensor: String },
    #[error("unknown tensor `{0}`")]
    UnknownTensor(String),
    #[error("node `{0}` has zero output elements")]
    ZeroOutput(String),
}

/// How many Ops one MAC counts as. The default of 2 counts the multiply and
/// the accumulate separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpsConvention {
    pub ops_per_mac: u64,
}

impl Default for OpsConvention {
    fn default() -> Self {
        OpsConvention { ops_per_mac: 2 }
    }
}

/// Softmax budget per output: max, subtract, exp, sum, divide.
pub const SOFTMAX_OPS_PER_OUTPUT: u64 = 5;

/// Primitive ops per output element for the non-MAC kinds. `window` is Kh·Kw
/// for pools and `fan_in` the operand count of Add.
fn primitive_ops_per_output(kind: OpKind, window: u64, fan_in: u64) -> u64 {
    match kind {
        OpKind::MaxPool => window - 1,
        // window - 1 adds and one divide
        OpKind::AvgPool => window,
        OpKind::ReLU | OpKind::Concat => 1,
        OpKind::Add => fan_in - 1,
        OpKind::Softmax => SOFTMAX_OPS_PER_OUTPUT,
        OpKind::Conv2D | OpKind::Conv1x1 | OpKind::DWConv2D | OpKind::FullyConnected => {
            unreachable!("MAC kinds are counted by MACs")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerMetrics {
    pub macs: u64,
    pub ops: u64,
    /// Weights plus biases.
    pub params: u64,
    pub params_bytes: u64,
    pub out_elements: u64,
    pub out_bytes: u64,
    pub work_per_output: Ratio<u64>,
}

impl LayerMetrics {
    pub fn compute(
        node: &OpNode,
        shapes: &ShapeMap,
        conv: OpsConvention,
    ) -> Result<LayerMetrics, MetricsError> {
        let (params, params_bytes) = count_params(node, shapes)?;
        let out = output_info(node, shapes)?;
        Ok(LayerMetrics {
            macs: count_macs(node, shapes)?,
            ops: count_ops(node, shapes, conv)?,
            params,
            params_bytes,
            out_elements: out.shape.element_count(),
            out_bytes: out.byte_size(),
            work_per_output: work_per_output(node, shapes)?,
        })
    }
}

fn tensor<'a>(
    node: &OpNode,
    tensor: &str,
    shapes: &'a ShapeMap,
) -> Result<&'a TensorInfo, MetricsError> {
    shapes
        .get(tensor)
        .ok_or_else(|| MetricsError::UnresolvedShape {
            node: node.name.clone(),
            tensor: tensor.to_string(),
        })
}

fn input_info<'a>(node: &OpNode, shapes: &'a ShapeMap) -> Result<&'a TensorInfo, MetricsError> {
    tensor(node, &node.inputs[0], shapes)
}

fn output_info<'a>(node: &OpNode, shapes: &'a ShapeMap) -> Result<&'a TensorInfo, MetricsError> {
    tensor(node, node.output(), shapes)
}

fn channels(info: &TensorInfo) -> u64 {
    *info.shape.dims().last().expect("non-empty shape") as u64
}

fn window(node: &OpNode) -> u64 {
    let (kh, kw) = node.attrs.kernel_or_unit();
    (kh * kw) as u64
}

pub fn count_macs(node: &OpNode, shapes: &ShapeMap) -> Result<u64, MetricsError> {
    if !node.kind.is_mac() {
        return Ok(0);
    }
    let input = input_info(node, shapes)?;
    let out = output_info(node, shapes)?;
    let out_elems = out.shape.element_count();
    Ok(match node.kind {
        // Hout·Wout·Cout · Kh·Kw·Cin
        OpKind::Conv2D | OpKind::Conv1x1 => out_elems * window(node) * channels(input),
        // Hout·Wout·C · Kh·Kw
        OpKind::DWConv2D => out_elems * window(node),
        OpKind::FullyConnected => input.shape.element_count() * out_elems,
        _ => unreachable!(),
    })
}

pub fn count_ops(
    node: &OpNode,
    shapes: &ShapeMap,
    conv: OpsConvention,
) -> Result<u64, MetricsError> {
    let out_elems = output_info(node, shapes)?.shape.element_count();
    if node.kind.is_mac() {
        let bias = if node.attrs.has_bias { out_elems } else { 0 };
        return Ok(conv.ops_per_mac * count_macs(node, shapes)? + bias);
    }
    Ok(out_elems * primitive_ops_per_output(node.kind, window(node), node.inputs.len() as u64))
}

/// Parameter count (weights plus optional bias) and its size in bytes. The
/// weight dtype is the dtype of the node's input.
pub fn count_params(node: &OpNode, shapes: &ShapeMap) -> Result<(u64, u64), MetricsError> {
    if !node.kind.is_mac() {
        return Ok((0, 0));
    }
    let input = input_info(node, shapes)?;
    let out = output_info(node, shapes)?;
    let cin = channels(input);
    let (weights, biases) = match node.kind {
        OpKind::Conv2D | OpKind::Conv1x1 => {
            let cout = channels(out);
            (window(node) * cin * cout, cout)
        }
        OpKind::DWConv2D => (window(node) * cin, cin),
        OpKind::FullyConnected => {
            let nout = out.shape.element_count();
            (input.shape.element_count() * nout, nout)
        }
        _ => unreachable!(),
    };
    let count = weights + if node.attrs.has_bias { biases } else { 0 };
    Ok((count, count * input.dtype.width()))
}

pub fn work_per_output(node: &OpNode, shapes: &ShapeMap) -> Result<Ratio<u64>, MetricsError> {
    let out_elems = output_info(node, shapes)?.shape.element_count();
    if out_elems == 0 {
        return Err(MetricsError::ZeroOutput(node.name.clone()));
    }
    if node.kind.is_mac() {
        Ok(Ratio::new(count_macs(node, shapes)?, out_elems))
    } else {
        Ok(Ratio::from_integer(primitive_ops_per_output(
            node.kind,
            window(node),
            node.inputs.len() as u64,
        )))
    }
}

pub fn activation_bytes(tensor: &str, shapes: &ShapeMap) -> Result<u64, MetricsError> {
    shapes
        .get(tensor)
        .map(TensorInfo::byte_size)
        .ok_or_else(|| MetricsError::UnknownTensor(tensor.to_string()))
}
