//! Model file reader and writer (strict JSON).

use serde::{Deserialize, Serialize};

use super::{DType, Graph, GraphError, GraphInput, OpAttrs, OpKind, OpNode, Padding, TensorShape};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    name: String,
    inputs: Vec<InputDecl>,
    nodes: Vec<NodeDecl>,
    outputs: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InputDecl {
    name: String,
    shape: Vec<usize>,
    dtype: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDecl {
    name: String,
    op: String,
    inputs: Vec<String>,
    #[serde(default, skip_serializing_if = "AttrsDecl::is_empty")]
    attrs: AttrsDecl,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AttrsDecl {
    #[serde(skip_serializing_if = "Option::is_none")]
    kernel: Option<[usize; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stride: Option<[usize; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pad: Option<PadDecl>,
    #[serde(skip_serializing_if = "Option::is_none")]
    out_channels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    units: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    has_bias: Option<bool>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum PadDecl {
    Mode(String),
    Explicit([usize; 2]),
}

impl AttrsDecl {
    fn is_empty(&self) -> bool {
        self.present().is_empty()
    }

    fn present(&self) -> Vec<&'static str> {
        let mut keys = Vec::new();
        if self.kernel.is_some() {
            keys.push("kernel");
        }
        if self.stride.is_some() {
            keys.push("stride");
        }
        if self.pad.is_some() {
            keys.push("pad");
        }
        if self.out_channels.is_some() {
            keys.push("out_channels");
        }
        if self.units.is_some() {
            keys.push("units");
        }
        if self.has_bias.is_some() {
            keys.push("has_bias");
        }
        keys
    }

    fn into_attrs(self, node: &str, kind: OpKind) -> Result<OpAttrs, GraphError> {
        for key in self.present() {
            if !kind.allowed_attrs().contains(&key) {
                return Err(GraphError::InvalidAttrs {
                    node: node.to_string(),
                    reason: format!("attribute `{key}` is not accepted by {kind}"),
                });
            }
        }
        let pad = match self.pad {
            None => Padding::Valid,
            Some(PadDecl::Mode(m)) => match m.as_str() {
                "same" => Padding::Same,
                "valid" => Padding::Valid,
                other => {
                    return Err(GraphError::InvalidAttrs {
                        node: node.to_string(),
                        reason: format!("unknown padding mode `{other}`"),
                    })
                }
            },
            Some(PadDecl::Explicit([ph, pw])) => Padding::Explicit(ph, pw),
        };
        let defaults = OpAttrs::default();
        Ok(OpAttrs {
            kernel: self.kernel.map(|[h, w]| (h, w)),
            stride: self.stride.map(|[h, w]| (h, w)).unwrap_or(defaults.stride),
            pad,
            out_channels: self.out_channels,
            units: self.units,
            has_bias: self.has_bias.unwrap_or(defaults.has_bias),
        })
    }

    fn from_attrs(kind: OpKind, a: &OpAttrs) -> AttrsDecl {
        let allowed = kind.allowed_attrs();
        let keep = |key: &str| allowed.contains(&key);
        AttrsDecl {
            kernel: a.kernel.filter(|_| keep("kernel")).map(|(h, w)| [h, w]),
            stride: keep("stride").then_some([a.stride.0, a.stride.1]),
            pad: keep("pad").then(|| match a.pad {
                Padding::Same => PadDecl::Mode("same".into()),
                Padding::Valid => PadDecl::Mode("valid".into()),
                Padding::Explicit(h, w) => PadDecl::Explicit([h, w]),
            }),
            out_channels: a.out_channels.filter(|_| keep("out_channels")),
            units: a.units.filter(|_| keep("units")),
            has_bias: keep("has_bias").then_some(a.has_bias),
        }
    }
}

fn json_error(e: serde_json::Error) -> GraphError {
    let (line, column, message) = (e.line(), e.column(), e.to_string());
    match e.classify() {
        serde_json::error::Category::Data => GraphError::Schema {
            line,
            column,
            message,
        },
        _ => GraphError::Syntax {
            line,
            column,
            message,
        },
    }
}

/// Parses and validates a model file. Defaults: stride 1, padding valid,
/// `has_bias` true.
pub fn parse_model(text: &str) -> Result<Graph, GraphError> {
    let file: ModelFile = serde_json::from_str(text).map_err(json_error)?;

    let mut inputs = Vec::with_capacity(file.inputs.len());
    for decl in file.inputs {
        let dtype = DType::parse(&decl.dtype).ok_or_else(|| GraphError::InvalidShape {
            tensor: decl.name.clone(),
            reason: format!("unknown dtype `{}`", decl.dtype),
        })?;
        let shape = TensorShape::new(decl.shape).map_err(|reason| GraphError::InvalidShape {
            tensor: decl.name.clone(),
            reason,
        })?;
        inputs.push(GraphInput::new(decl.name, shape, dtype));
    }

    let mut nodes = Vec::with_capacity(file.nodes.len());
    for decl in file.nodes {
        let kind = OpKind::parse(&decl.op).ok_or_else(|| GraphError::UnknownOp {
            node: decl.name.clone(),
            op: decl.op.clone(),
        })?;
        let attrs = decl.attrs.into_attrs(&decl.name, kind)?;
        nodes.push(OpNode {
            name: decl.name,
            kind,
            inputs: decl.inputs,
            attrs,
        });
    }

    Graph::new(file.name, inputs, nodes, file.outputs)
}

/// Serializes a graph back to the model file format with every default made
/// explicit.
pub fn to_model_json(g: &Graph) -> String {
    let file = ModelFile {
        name: g.name().to_string(),
        inputs: g
            .inputs()
            .iter()
            .map(|i| InputDecl {
                name: i.name.clone(),
                shape: i.shape.dims().to_vec(),
                dtype: i.dtype.as_str().to_string(),
            })
            .collect(),
        nodes: g
            .nodes()
            .iter()
            .map(|n| NodeDecl {
                name: n.name.clone(),
                op: n.kind.as_str().to_string(),
                inputs: n.inputs.clone(),
                attrs: AttrsDecl::from_attrs(n.kind, &n.attrs),
            })
            .collect(),
        outputs: g.outputs().to_vec(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("model serialization is infallible");
    s.push('\n');
    s
}
