//! Graph IR for the analyzed networks.
//!
//! Feature maps use H, W, C layout; vectors are a single flat extent. Every
//! node produces exactly one tensor, named after the node.

mod order;
mod parse;
mod shape;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

pub(crate) use order::check_order;
pub use order::{all_topological_orders, default_order, ExecutionOrder};
pub use parse::{parse_model, to_model_json};
pub use shape::{infer_shapes, ShapeMap, TensorInfo};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error at line {line}, column {column}: {message}")]
    Schema {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("node `{node}`: unknown op kind `{op}`")]
    UnknownOp { node: String, op: String },
    #[error("duplicate tensor name `{0}`")]
    DuplicateTensor(String),
    #[error("node `{node}`: input `{tensor}` is neither a graph input nor a node output")]
    DanglingInput { node: String, tensor: String },
    #[error("cycle detected through nodes [{}]", members.join(", "))]
    Cycle { members: Vec<String> },
    #[error("graph output `{0}` is not produced by any node or graph input")]
    UndeclaredOutput(String),
    #[error("tensor `{0}` is never consumed and is not a graph output")]
    DeadTensor(String),
    #[error("node `{node}`: {reason}")]
    InvalidAttrs { node: String, reason: String },
    #[error("tensor `{tensor}`: {reason}")]
    InvalidShape { tensor: String, reason: String },
    #[error("node `{node}`: shape mismatch: {reason}")]
    ShapeMismatch { node: String, reason: String },
    #[error(
        "node `{node}`: non-positive output extent on axis {axis} \
         (input {input}, padding {pad_total}, kernel {kernel})"
    )]
    NonPositiveExtent {
        node: String,
        axis: usize,
        input: usize,
        pad_total: usize,
        kernel: usize,
    },
    #[error("node `{node}`: expected a rank-{expected} input, found rank {found}")]
    RankMismatch {
        node: String,
        expected: usize,
        found: usize,
    },
    #[error(
        "more than {limit} topological orders; exhaustive search refused, use the default order"
    )]
    OrderLimitExceeded { limit: usize },
    #[error("invalid execution order: {0}")]
    InvalidOrder(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DType {
    I8,
    I16,
    F32,
}

impl DType {
    /// Bytes per element.
    pub fn width(self) -> u64 {
        match self {
            DType::I8 => 1,
            DType::I16 => 2,
            DType::F32 => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DType::I8 => "i8",
            DType::I16 => "i16",
            DType::F32 => "f32",
        }
    }

    pub fn parse(s: &str) -> Option<DType> {
        match s {
            "i8" => Some(DType::I8),
            "i16" => Some(DType::I16),
            "f32" => Some(DType::F32),
            _ => None,
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Extents of a tensor. All extents are at least one.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TensorShape {
    dims: Vec<usize>,
}

impl TensorShape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self, String> {
        let dims = dims.into();
        if dims.is_empty() {
            return Err("shape must have at least one dimension".into());
        }
        if dims.contains(&0) {
            return Err(format!("zero extent in shape {dims:?}"));
        }
        Ok(TensorShape { dims })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn element_count(&self) -> u64 {
        self.dims.iter().map(|&d| d as u64).product()
    }

    pub fn byte_size(&self, dtype: DType) -> u64 {
        self.element_count() * dtype.width()
    }
}

impl fmt::Display for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, d) in self.dims.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{d}")?;
        }
        write!(f, "]")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    Conv2D,
    Conv1x1,
    DWConv2D,
    FullyConnected,
    MaxPool,
    AvgPool,
    ReLU,
    Add,
    Concat,
    Softmax,
}

impl OpKind {
    pub const ALL: [OpKind; 10] = [
        OpKind::Conv2D,
        OpKind::Conv1x1,
        OpKind::DWConv2D,
        OpKind::FullyConnected,
        OpKind::MaxPool,
        OpKind::AvgPool,
        OpKind::ReLU,
        OpKind::Add,
        OpKind::Concat,
        OpKind::Softmax,
    ];

    /// Name used in model files.
    pub fn as_str(self) -> &'static str {
        match self {
            OpKind::Conv2D => "conv2d",
            OpKind::Conv1x1 => "conv1x1",
            OpKind::DWConv2D => "dwconv2d",
            OpKind::FullyConnected => "fully_connected",
            OpKind::MaxPool => "maxpool",
            OpKind::AvgPool => "avgpool",
            OpKind::ReLU => "relu",
            OpKind::Add => "add",
            OpKind::Concat => "concat",
            OpKind::Softmax => "softmax",
        }
    }

    pub fn parse(s: &str) -> Option<OpKind> {
        OpKind::ALL.into_iter().find(|k| k.as_str() == s)
    }

    /// Kinds whose work is multiply-accumulate and which carry weights.
    pub fn is_mac(self) -> bool {
        matches!(
            self,
            OpKind::Conv2D | OpKind::Conv1x1 | OpKind::DWConv2D | OpKind::FullyConnected
        )
    }

    pub fn is_pool(self) -> bool {
        matches!(self, OpKind::MaxPool | OpKind::AvgPool)
    }

    /// Kinds with a spatial window (kernel, stride, padding).
    pub fn is_windowed(self) -> bool {
        matches!(
            self,
            OpKind::Conv2D | OpKind::Conv1x1 | OpKind::DWConv2D | OpKind::MaxPool | OpKind::AvgPool
        )
    }

    /// Kinds that may write their output over their first input.
    pub fn can_run_in_place(self) -> bool {
        matches!(self, OpKind::ReLU | OpKind::Add)
    }

    fn allowed_attrs(self) -> &'static [&'static str] {
        match self {
            OpKind::Conv2D | OpKind::Conv1x1 => {
                &["kernel", "stride", "pad", "out_channels", "has_bias"]
            }
            OpKind::DWConv2D => &["kernel", "stride", "pad", "has_bias"],
            OpKind::FullyConnected => &["units", "has_bias"],
            OpKind::MaxPool | OpKind::AvgPool => &["kernel", "stride", "pad"],
            OpKind::ReLU | OpKind::Add | OpKind::Concat | OpKind::Softmax => &[],
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Spatial padding. `Explicit(ph, pw)` pads each side by the given amount.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Padding {
    /// Output extent is `ceil(in / stride)`.
    Same,
    #[default]
    Valid,
    Explicit(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OpAttrs {
    pub kernel: Option<(usize, usize)>,
    pub stride: (usize, usize),
    pub pad: Padding,
    pub out_channels: Option<usize>,
    pub units: Option<usize>,
    pub has_bias: bool,
}

impl Default for OpAttrs {
    fn default() -> Self {
        OpAttrs {
            kernel: None,
            stride: (1, 1),
            pad: Padding::Valid,
            out_channels: None,
            units: None,
            has_bias: true,
        }
    }
}

impl OpAttrs {
    pub fn kernel(mut self, kh: usize, kw: usize) -> Self {
        self.kernel = Some((kh, kw));
        self
    }

    pub fn stride(mut self, sh: usize, sw: usize) -> Self {
        self.stride = (sh, sw);
        self
    }

    pub fn pad(mut self, pad: Padding) -> Self {
        self.pad = pad;
        self
    }

    pub fn out_channels(mut self, n: usize) -> Self {
        self.out_channels = Some(n);
        self
    }

    pub fn units(mut self, n: usize) -> Self {
        self.units = Some(n);
        self
    }

    pub fn bias(mut self, has_bias: bool) -> Self {
        self.has_bias = has_bias;
        self
    }

    /// Kernel extents; Conv1x1 implies 1x1 when not given.
    pub fn kernel_or_unit(&self) -> (usize, usize) {
        self.kernel.unwrap_or((1, 1))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OpNode {
    pub name: String,
    pub kind: OpKind,
    pub inputs: Vec<String>,
    pub attrs: OpAttrs,
}

impl OpNode {
    pub fn new<S: Into<String>>(
        name: impl Into<String>,
        kind: OpKind,
        inputs: impl IntoIterator<Item = S>,
        attrs: OpAttrs,
    ) -> Self {
        OpNode {
            name: name.into(),
            kind,
            inputs: inputs.into_iter().map(Into::into).collect(),
            attrs,
        }
    }

    /// Name of the single tensor this node produces.
    pub fn output(&self) -> &str {
        &self.name
    }

    fn check_attrs(&self) -> Result<(), GraphError> {
        let bad = |reason: String| GraphError::InvalidAttrs {
            node: self.name.clone(),
            reason,
        };
        let a = &self.attrs;
        match self.kind {
            OpKind::Add if self.inputs.len() < 2 => {
                return Err(bad(format!(
                    "add needs at least 2 inputs, got {}",
                    self.inputs.len()
                )))
            }
            OpKind::Concat if self.inputs.is_empty() => {
                return Err(bad("concat needs at least 1 input".into()))
            }
            OpKind::Add | OpKind::Concat => {}
            _ if self.inputs.len() != 1 => {
                return Err(bad(format!(
                    "{} takes exactly 1 input, got {}",
                    self.kind,
                    self.inputs.len()
                )))
            }
            _ => {}
        }
        if self.kind.is_windowed() {
            match (self.kind, a.kernel) {
                (OpKind::Conv1x1, Some(k)) if k != (1, 1) => {
                    return Err(bad(format!(
                        "conv1x1 kernel must be [1,1], got [{},{}]",
                        k.0, k.1
                    )))
                }
                (OpKind::Conv1x1, _) => {}
                (_, None) => return Err(bad(format!("{} requires `kernel`", self.kind))),
                (_, Some((kh, kw))) if kh == 0 || kw == 0 => {
                    return Err(bad("kernel extents must be at least 1".into()))
                }
                _ => {}
            }
            if a.stride.0 == 0 || a.stride.1 == 0 {
                return Err(bad("stride extents must be at least 1".into()));
            }
        }
        if matches!(self.kind, OpKind::Conv2D | OpKind::Conv1x1) {
            match a.out_channels {
                None => return Err(bad(format!("{} requires `out_channels`", self.kind))),
                Some(0) => return Err(bad("out_channels must be at least 1".into())),
                _ => {}
            }
        }
        if self.kind == OpKind::FullyConnected {
            match a.units {
                None => return Err(bad("fully_connected requires `units`".into())),
                Some(0) => return Err(bad("units must be at least 1".into())),
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GraphInput {
    pub name: String,
    pub shape: TensorShape,
    pub dtype: DType,
}

impl GraphInput {
    pub fn new(name: impl Into<String>, shape: TensorShape, dtype: DType) -> Self {
        GraphInput {
            name: name.into(),
            shape,
            dtype,
        }
    }
}

/// A validated network graph.
///
/// Tensor names are unique, every node input resolves, the dependency
/// structure is acyclic, every output is produced, and every tensor is either
/// consumed or a graph output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    name: String,
    inputs: Vec<GraphInput>,
    nodes: Vec<OpNode>,
    outputs: Vec<String>,
    /// Node index by node name.
    index: BTreeMap<String, usize>,
    /// Predecessor node indices (deduplicated, ascending).
    preds: Vec<Vec<usize>>,
}

impl Graph {
    pub fn new(
        name: impl Into<String>,
        inputs: Vec<GraphInput>,
        nodes: Vec<OpNode>,
        outputs: Vec<String>,
    ) -> Result<Graph, GraphError> {
        for node in &nodes {
            node.check_attrs()?;
        }

        let mut seen = BTreeSet::new();
        for name in inputs
            .iter()
            .map(|i| i.name.as_str())
            .chain(nodes.iter().map(|n| n.name.as_str()))
        {
            if !seen.insert(name) {
                return Err(GraphError::DuplicateTensor(name.to_string()));
            }
        }

        let index: BTreeMap<String, usize> = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.name.clone(), i))
            .collect();
        let input_names: BTreeSet<&str> = inputs.iter().map(|i| i.name.as_str()).collect();

        let mut preds = Vec::with_capacity(nodes.len());
        for node in &nodes {
            let mut p = BTreeSet::new();
            for t in &node.inputs {
                if let Some(&j) = index.get(t) {
                    p.insert(j);
                } else if !input_names.contains(t.as_str()) {
                    return Err(GraphError::DanglingInput {
                        node: node.name.clone(),
                        tensor: t.clone(),
                    });
                }
            }
            preds.push(p.into_iter().collect::<Vec<_>>());
        }

        if let Some(members) = find_cycle(&nodes, &preds) {
            return Err(GraphError::Cycle { members });
        }

        let mut out_seen = BTreeSet::new();
        for o in &outputs {
            if !seen.contains(o.as_str()) {
                return Err(GraphError::UndeclaredOutput(o.clone()));
            }
            if !out_seen.insert(o.as_str()) {
                return Err(GraphError::DuplicateTensor(o.clone()));
            }
        }

        let consumed: BTreeSet<&str> = nodes
            .iter()
            .flat_map(|n| n.inputs.iter().map(String::as_str))
            .collect();
        for t in inputs
            .iter()
            .map(|i| i.name.as_str())
            .chain(nodes.iter().map(|n| n.name.as_str()))
        {
            if !consumed.contains(t) && !out_seen.contains(t) {
                return Err(GraphError::DeadTensor(t.to_string()));
            }
        }

        Ok(Graph {
            name: name.into(),
            inputs,
            nodes,
            outputs,
            index,
            preds,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn inputs(&self) -> &[GraphInput] {
        &self.inputs
    }

    pub fn nodes(&self) -> &[OpNode] {
        &self.nodes
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }

    pub fn node(&self, name: &str) -> Option<&OpNode> {
        self.index.get(name).map(|&i| &self.nodes[i])
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Indices of the nodes producing this node's inputs.
    pub fn predecessors(&self, node: usize) -> &[usize] {
        &self.preds[node]
    }

    pub fn is_graph_input(&self, tensor: &str) -> bool {
        self.inputs.iter().any(|i| i.name == tensor)
    }

    pub fn is_graph_output(&self, tensor: &str) -> bool {
        self.outputs.iter().any(|o| o == tensor)
    }

    /// Names of all tensors: graph inputs first, then node outputs.
    pub fn tensor_names(&self) -> impl Iterator<Item = &str> {
        self.inputs
            .iter()
            .map(|i| i.name.as_str())
            .chain(self.nodes.iter().map(|n| n.name.as_str()))
    }

    /// Number of distinct nodes consuming each tensor.
    pub fn consumer_counts(&self) -> HashMap<&str, usize> {
        let mut counts: HashMap<&str, usize> = self.tensor_names().map(|t| (t, 0)).collect();
        for node in &self.nodes {
            let distinct: BTreeSet<&str> = node.inputs.iter().map(String::as_str).collect();
            for t in distinct {
                *counts.entry(t).or_default() += 1;
            }
        }
        counts
    }
}

/// Returns the members of one dependency cycle, starting from the smallest
/// name on it, or `None` when the graph is acyclic.
fn find_cycle(nodes: &[OpNode], preds: &[Vec<usize>]) -> Option<Vec<String>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let mut marks = vec![Mark::New; nodes.len()];
    let mut roots: Vec<usize> = (0..nodes.len()).collect();
    roots.sort_by(|&a, &b| nodes[a].name.cmp(&nodes[b].name));

    for root in roots {
        if marks[root] != Mark::New {
            continue;
        }
        // Iterative DFS over predecessor edges; `path` holds the active chain.
        let mut path = vec![root];
        let mut cursor = vec![0usize];
        marks[root] = Mark::Active;
        while let Some(&top) = path.last() {
            let k = cursor.last_mut().unwrap();
            if let Some(&next) = preds[top].get(*k) {
                *k += 1;
                match marks[next] {
                    Mark::New => {
                        marks[next] = Mark::Active;
                        path.push(next);
                        cursor.push(0);
                    }
                    Mark::Active => {
                        let start = path.iter().position(|&n| n == next).unwrap();
                        let mut members: Vec<String> = path[start..]
                            .iter()
                            .map(|&n| nodes[n].name.clone())
                            .collect();
                        // path follows consumer -> producer; report producer -> consumer.
                        members.reverse();
                        let min = (0..members.len())
                            .min_by(|&a, &b| members[a].cmp(&members[b]))
                            .unwrap();
                        members.rotate_left(min);
                        return Some(members);
                    }
                    Mark::Done => {}
                }
            } else {
                marks[top] = Mark::Done;
                path.pop();
                cursor.pop();
            }
        }
    }
    None
}
