use std::collections::BTreeMap;

use super::{DType, Graph, GraphError, OpKind, OpNode, Padding, TensorShape};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorInfo {
    pub shape: TensorShape,
    pub dtype: DType,
}

impl TensorInfo {
    pub fn byte_size(&self) -> u64 {
        self.shape.byte_size(self.dtype)
    }
}

/// Resolved shape and dtype of every tensor in a graph.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ShapeMap {
    tensors: BTreeMap<String, TensorInfo>,
}

impl ShapeMap {
    pub fn get(&self, tensor: &str) -> Option<&TensorInfo> {
        self.tensors.get(tensor)
    }

    pub fn insert(&mut self, tensor: impl Into<String>, info: TensorInfo) {
        self.tensors.insert(tensor.into(), info);
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &TensorInfo)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }
}

/// Output extent of one windowed axis.
///
/// Same padding picks the total pad so that the output is `ceil(in / stride)`;
/// explicit padding `p` pads both sides.
pub(crate) fn window_extent(
    input: usize,
    kernel: usize,
    stride: usize,
    pad: Padding,
    axis: usize,
) -> Result<usize, (usize, usize)> {
    let pad_total = match pad {
        Padding::Valid => 0,
        Padding::Explicit(ph, pw) => 2 * if axis == 0 { ph } else { pw },
        Padding::Same => {
            let out = input.div_ceil(stride);
            ((out - 1) * stride + kernel).saturating_sub(input)
        }
    };
    if input + pad_total < kernel {
        return Err((pad_total, kernel));
    }
    Ok((input + pad_total - kernel) / stride + 1)
}

fn shape(node: &OpNode, dims: Vec<usize>) -> Result<TensorShape, GraphError> {
    TensorShape::new(dims).map_err(|reason| GraphError::InvalidShape {
        tensor: node.name.clone(),
        reason,
    })
}

fn node_output(node: &OpNode, ins: &[&TensorInfo]) -> Result<TensorInfo, GraphError> {
    let first = ins[0];
    let dtype = first.dtype;
    let in_dims = first.shape.dims();
    let a = &node.attrs;

    let spatial = |out_c: usize| -> Result<TensorShape, GraphError> {
        if in_dims.len() != 3 {
            return Err(GraphError::RankMismatch {
                node: node.name.clone(),
                expected: 3,
                found: in_dims.len(),
            });
        }
        let (kh, kw) = a.kernel_or_unit();
        let extent = |axis: usize, k: usize, s: usize| {
            window_extent(in_dims[axis], k, s, a.pad, axis).map_err(|(pad_total, kernel)| {
                GraphError::NonPositiveExtent {
                    node: node.name.clone(),
                    axis,
                    input: in_dims[axis],
                    pad_total,
                    kernel,
                }
            })
        };
        let ho = extent(0, kh, a.stride.0)?;
        let wo = extent(1, kw, a.stride.1)?;
        shape(node, vec![ho, wo, out_c])
    };

    let out = match node.kind {
        OpKind::Conv2D | OpKind::Conv1x1 => spatial(a.out_channels.expect("validated"))?,
        OpKind::DWConv2D | OpKind::MaxPool | OpKind::AvgPool => {
            spatial(*in_dims.last().expect("non-empty shape"))?
        }
        OpKind::FullyConnected => shape(node, vec![a.units.expect("validated")])?,
        OpKind::ReLU | OpKind::Softmax => first.shape.clone(),
        OpKind::Add => {
            for other in &ins[1..] {
                if other.shape != first.shape {
                    return Err(GraphError::ShapeMismatch {
                        node: node.name.clone(),
                        reason: format!("add operands {} and {} differ", first.shape, other.shape),
                    });
                }
            }
            first.shape.clone()
        }
        OpKind::Concat => {
            let rank = in_dims.len();
            let mut channels = 0;
            for other in ins {
                let d = other.shape.dims();
                if d.len() != rank || d[..rank - 1] != in_dims[..rank - 1] {
                    return Err(GraphError::ShapeMismatch {
                        node: node.name.clone(),
                        reason: format!(
                            "concat operands {} and {} differ outside the channel axis",
                            first.shape, other.shape
                        ),
                    });
                }
                channels += d[rank - 1];
            }
            let mut dims = in_dims.to_vec();
            dims[rank - 1] = channels;
            shape(node, dims)?
        }
    };
    Ok(TensorInfo { shape: out, dtype })
}

/// Resolves every tensor's shape. Nodes are visited in the default order so
/// that producers precede consumers.
pub fn infer_shapes(g: &Graph) -> Result<ShapeMap, GraphError> {
    let mut map = ShapeMap::default();
    for i in g.inputs() {
        map.insert(
            i.name.clone(),
            TensorInfo {
                shape: i.shape.clone(),
                dtype: i.dtype,
            },
        );
    }
    for name in super::default_order(g) {
        let node = g.node(&name).expect("order names come from the graph");
        let ins: Vec<&TensorInfo> = node
            .inputs
            .iter()
            .map(|t| map.get(t).expect("producers resolved first"))
            .collect();
        let info = node_output(node, &ins)?;
        map.insert(node.name.clone(), info);
    }
    Ok(map)
}
