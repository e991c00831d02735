//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use opcost::{DType, Graph, GraphInput, OpAttrs, OpKind, OpNode, Padding, ShapeMap, TensorShape};
use rand::seq::SliceRandom;
use rand::Rng;

// ---------------------------------------------------------------------------
// Loop-nest counter

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NaiveCounts {
    pub out_dims: Vec<usize>,
    pub macs: u64,
    pub ops: u64,
    pub params: u64,
}

/// Window start positions along one axis: slide the window one stride at a
/// time and keep the placements the padding rule admits.
fn positions(input: usize, k: usize, s: usize, pad: Padding, axis: usize) -> usize {
    let mut n = 0;
    let mut start = 0;
    loop {
        let ok = match pad {
            // one output per stride step that starts inside the input
            Padding::Same => start < input,
            Padding::Valid => start + k <= input,
            Padding::Explicit(ph, pw) => {
                let p = if axis == 0 { ph } else { pw };
                start + k <= input + 2 * p
            }
        };
        if !ok {
            return n;
        }
        n += 1;
        start += s;
    }
}

/// Counts by literally walking every loop of a straightforward kernel.
/// `None` when the layer has no valid window placement.
pub fn naive_counts(kind: OpKind, in_dims: &[usize], a: &OpAttrs) -> Option<NaiveCounts> {
    let mut macs = 0u64;
    let mut ops = 0u64;
    let mut params = 0u64;
    let (kh, kw) = a.kernel.unwrap_or((1, 1));
    let (sh, sw) = a.stride;
    match kind {
        OpKind::Conv2D | OpKind::Conv1x1 | OpKind::DWConv2D | OpKind::MaxPool | OpKind::AvgPool => {
            let (h, w, c) = (in_dims[0], in_dims[1], in_dims[2]);
            let ho = positions(h, kh, sh, a.pad, 0);
            let wo = positions(w, kw, sw, a.pad, 1);
            if ho == 0 || wo == 0 {
                return None;
            }
            let cout = match kind {
                OpKind::Conv2D | OpKind::Conv1x1 => a.out_channels.unwrap(),
                _ => c,
            };
            for _oy in 0..ho {
                for _ox in 0..wo {
                    for _oc in 0..cout {
                        match kind {
                            OpKind::Conv2D | OpKind::Conv1x1 => {
                                for _ky in 0..kh {
                                    for _kx in 0..kw {
                                        for _ic in 0..c {
                                            macs += 1;
                                            ops += 2;
                                        }
                                    }
                                }
                                if a.has_bias {
                                    ops += 1;
                                }
                            }
                            OpKind::DWConv2D => {
                                for _ky in 0..kh {
                                    for _kx in 0..kw {
                                        macs += 1;
                                        ops += 2;
                                    }
                                }
                                if a.has_bias {
                                    ops += 1;
                                }
                            }
                            OpKind::MaxPool => {
                                let mut first = true;
                                for _ky in 0..kh {
                                    for _kx in 0..kw {
                                        if !first {
                                            ops += 1;
                                        }
                                        first = false;
                                    }
                                }
                            }
                            OpKind::AvgPool => {
                                let mut first = true;
                                for _ky in 0..kh {
                                    for _kx in 0..kw {
                                        if !first {
                                            ops += 1;
                                        }
                                        first = false;
                                    }
                                }
                                ops += 1; // divide
                            }
                            _ => unreachable!(),
                        }
                    }
                }
            }
            match kind {
                OpKind::Conv2D | OpKind::Conv1x1 => {
                    for _ in 0..kh * kw * c * cout {
                        params += 1;
                    }
                    if a.has_bias {
                        params += cout as u64;
                    }
                }
                OpKind::DWConv2D => {
                    for _ in 0..kh * kw * c {
                        params += 1;
                    }
                    if a.has_bias {
                        params += c as u64;
                    }
                }
                _ => {}
            }
            Some(NaiveCounts {
                out_dims: vec![ho, wo, cout],
                macs,
                ops,
                params,
            })
        }
        OpKind::FullyConnected => {
            let n_in: usize = in_dims.iter().product();
            let units = a.units.unwrap();
            for _o in 0..units {
                for _i in 0..n_in {
                    macs += 1;
                    ops += 2;
                    params += 1;
                }
                if a.has_bias {
                    ops += 1;
                    params += 1;
                }
            }
            Some(NaiveCounts {
                out_dims: vec![units],
                macs,
                ops,
                params,
            })
        }
        OpKind::ReLU | OpKind::Softmax => {
            let n: usize = in_dims.iter().product();
            for _ in 0..n {
                ops += if kind == OpKind::ReLU { 1 } else { 5 };
            }
            Some(NaiveCounts {
                out_dims: in_dims.to_vec(),
                macs,
                ops,
                params,
            })
        }
        OpKind::Add | OpKind::Concat => unreachable!("multi-input kinds use naive_multi_counts"),
    }
}

/// Add of `fan_in` equal tensors, or Concat along the last axis.
pub fn naive_multi_counts(kind: OpKind, ins: &[Vec<usize>]) -> NaiveCounts {
    let mut out = ins[0].clone();
    let mut ops = 0u64;
    match kind {
        OpKind::Add => {
            let n: usize = out.iter().product();
            for _ in 0..n {
                for _ in 1..ins.len() {
                    ops += 1;
                }
            }
        }
        OpKind::Concat => {
            let last = out.len() - 1;
            out[last] = ins.iter().map(|d| d[last]).sum();
            for d in ins {
                for _ in 0..d.iter().product::<usize>() {
                    ops += 1; // one copy per element
                }
            }
        }
        _ => unreachable!(),
    }
    NaiveCounts {
        out_dims: out,
        macs: 0,
        ops,
        params: 0,
    }
}

// ---------------------------------------------------------------------------
// Allocate/free simulator

/// Walks `order` like a runtime with an ideal allocator: graph inputs are
/// resident from the start, each node allocates its output before running
/// (or takes over its first input's buffer when running in place) and every
/// tensor is released after its last consumer, unless it is a graph output.
pub fn simulate_peak(g: &Graph, shapes: &ShapeMap, order: &[String], inplace: bool) -> u64 {
    let size = |t: &str| shapes.get(t).unwrap().byte_size();
    let mut readers: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for n in g.nodes() {
        for t in &n.inputs {
            readers
                .entry(t.as_str())
                .or_default()
                .insert(n.name.as_str());
        }
    }
    let is_output = |t: &str| g.outputs().iter().any(|o| o == t);

    // buffer id -> (bytes, tensors using it)
    let mut buffers: BTreeMap<usize, (u64, usize)> = BTreeMap::new();
    let mut home: BTreeMap<String, usize> = BTreeMap::new();
    let mut next_id = 0;
    let mut alloc = |bytes: u64, buffers: &mut BTreeMap<usize, (u64, usize)>| {
        next_id += 1;
        buffers.insert(next_id, (bytes, 1));
        next_id
    };
    for i in g.inputs() {
        let id = alloc(size(&i.name), &mut buffers);
        home.insert(i.name.clone(), id);
    }

    let mut pending = readers.clone();
    let mut peak = 0;
    for name in order {
        let node = g.nodes().iter().find(|n| &n.name == name).unwrap();
        let src = node.inputs[0].as_str();
        let reuse = inplace
            && matches!(node.kind, OpKind::ReLU | OpKind::Add)
            && readers[src].len() == 1
            && !is_output(src);
        let id = if reuse {
            let id = home[src];
            buffers.get_mut(&id).unwrap().1 += 1;
            id
        } else {
            alloc(size(name), &mut buffers)
        };
        home.insert(name.clone(), id);

        let resident: u64 = buffers.values().map(|(b, _)| b).sum();
        peak = peak.max(resident);

        let distinct: BTreeSet<&str> = node.inputs.iter().map(String::as_str).collect();
        for t in distinct {
            let left = pending.get_mut(t).unwrap();
            left.remove(name.as_str());
            if left.is_empty() && !is_output(t) {
                let id = home[t];
                let entry = buffers.get_mut(&id).unwrap();
                entry.1 -= 1;
                if entry.1 == 0 {
                    buffers.remove(&id);
                }
            }
        }
    }
    peak
}

// ---------------------------------------------------------------------------
// Order enumeration

/// Every permutation of the node names that respects the edges, found by
/// trying each not-yet-placed node at every position.
pub fn brute_force_orders(g: &Graph) -> Vec<Vec<String>> {
    let names: Vec<&str> = g.nodes().iter().map(|n| n.name.as_str()).collect();
    let deps: Vec<Vec<&str>> = g
        .nodes()
        .iter()
        .map(|n| {
            n.inputs
                .iter()
                .map(String::as_str)
                .filter(|t| names.contains(t))
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    let mut placed: Vec<&str> = Vec::new();
    fn go<'a>(
        names: &[&'a str],
        deps: &[Vec<&'a str>],
        placed: &mut Vec<&'a str>,
        out: &mut Vec<Vec<String>>,
    ) {
        if placed.len() == names.len() {
            out.push(placed.iter().map(|s| s.to_string()).collect());
            return;
        }
        for (i, &n) in names.iter().enumerate() {
            if placed.contains(&n) {
                continue;
            }
            if deps[i].iter().all(|d| placed.contains(d)) {
                placed.push(n);
                go(names, deps, placed, out);
                placed.pop();
            }
        }
    }
    go(&names, &deps, &mut placed, &mut out);
    out
}

/// True when `order` is a permutation of the nodes and every producer comes
/// before its consumers.
pub fn respects_edges(g: &Graph, order: &[String]) -> bool {
    let mut names: Vec<&str> = g.nodes().iter().map(|n| n.name.as_str()).collect();
    let mut sorted: Vec<&str> = order.iter().map(String::as_str).collect();
    names.sort_unstable();
    sorted.sort_unstable();
    if names != sorted {
        return false;
    }
    let pos = |n: &str| order.iter().position(|o| o == n);
    g.nodes().iter().all(|n| {
        let me = pos(&n.name).unwrap();
        n.inputs.iter().all(|t| pos(t).is_none_or(|p| p < me))
    })
}

// ---------------------------------------------------------------------------
// Random graphs

pub const DTYPES: [DType; 3] = [DType::I8, DType::I16, DType::F32];

/// Random DAG over flat tensors built from FullyConnected, ReLU, Add, Concat
/// and Softmax. Node names are shuffled so file order, creation order and
/// name order all differ. Every unconsumed tensor becomes a graph output.
pub fn random_dag<R: Rng>(rng: &mut R, max_nodes: usize, dtype: Option<DType>) -> Graph {
    let n_nodes = rng.gen_range(1..=max_nodes);
    let n_inputs = rng.gen_range(1..=2);
    let mut labels: Vec<usize> = (0..n_nodes).collect();
    labels.shuffle(rng);

    let mut sizes: Vec<(String, usize)> = Vec::new();
    let mut inputs = Vec::new();
    for i in 0..n_inputs {
        let len = rng.gen_range(1..=48);
        let dt = dtype.unwrap_or_else(|| *DTYPES.choose(rng).unwrap());
        let name = format!("in{i}");
        inputs.push(GraphInput::new(
            name.clone(),
            TensorShape::new(vec![len]).unwrap(),
            dt,
        ));
        sizes.push((name, len));
    }

    let mut nodes = Vec::new();
    for &label in labels.iter() {
        let name = format!("n{label}");
        // favour recent tensors so graphs are not all wide and flat
        let pick = |rng: &mut R, sizes: &[(String, usize)]| {
            let lo = sizes.len().saturating_sub(3);
            let i = if rng.gen_bool(0.7) {
                rng.gen_range(lo..sizes.len())
            } else {
                rng.gen_range(0..sizes.len())
            };
            sizes[i].clone()
        };
        let (first, first_len) = pick(rng, &sizes);
        let (kind, ins, out_len, attrs) = match rng.gen_range(0..5) {
            0 => {
                let units = rng.gen_range(1..=48);
                (
                    OpKind::FullyConnected,
                    vec![first],
                    units,
                    OpAttrs::default().units(units),
                )
            }
            1 => (OpKind::ReLU, vec![first], first_len, OpAttrs::default()),
            2 => (OpKind::Softmax, vec![first], first_len, OpAttrs::default()),
            3 => {
                let same: Vec<&String> = sizes
                    .iter()
                    .filter(|(_, l)| *l == first_len)
                    .map(|(n, _)| n)
                    .collect();
                let mut ins = vec![first];
                for _ in 0..rng.gen_range(1..=2) {
                    ins.push((*same.choose(rng).unwrap()).clone());
                }
                (OpKind::Add, ins, first_len, OpAttrs::default())
            }
            _ => {
                let mut ins = vec![first];
                let mut total = first_len;
                for _ in 0..rng.gen_range(0..=2) {
                    let (t, l) = pick(rng, &sizes);
                    ins.push(t);
                    total += l;
                }
                (OpKind::Concat, ins, total, OpAttrs::default())
            }
        };
        nodes.push(OpNode::new(name.clone(), kind, ins, attrs));
        sizes.push((name, out_len));
    }

    let consumed: BTreeSet<&str> = nodes
        .iter()
        .flat_map(|n: &OpNode| n.inputs.iter().map(String::as_str))
        .collect();
    let mut outputs: Vec<String> = sizes
        .iter()
        .map(|(n, _)| n)
        .filter(|n| !consumed.contains(n.as_str()) || (n.starts_with('n') && rng.gen_bool(0.15)))
        .cloned()
        .collect();
    outputs.sort();
    Graph::new("random", inputs, nodes, outputs).expect("generator builds valid graphs")
}

/// `n` independent FullyConnected nodes over one input.
pub fn independent_nodes(n: usize) -> Graph {
    let input = GraphInput::new("x", TensorShape::new(vec![8]).unwrap(), DType::I8);
    let nodes: Vec<OpNode> = (0..n)
        .map(|i| {
            OpNode::new(
                format!("f{i}"),
                OpKind::FullyConnected,
                ["x"],
                OpAttrs::default().units(4),
            )
        })
        .collect();
    let outputs = nodes.iter().map(|n| n.name.clone()).collect();
    Graph::new("independent", vec![input], nodes, outputs).unwrap()
}

/// Equal-width chain of `layers` 1x1 convolutions.
pub fn conv_chain(layers: usize, hw: usize, c: usize) -> Graph {
    let input = GraphInput::new("x", TensorShape::new(vec![hw, hw, c]).unwrap(), DType::I8);
    let mut nodes = Vec::new();
    let mut prev = "x".to_string();
    for i in 1..=layers {
        let name = format!("l{i}");
        nodes.push(OpNode::new(
            name.clone(),
            OpKind::Conv1x1,
            [prev],
            OpAttrs::default().out_channels(c),
        ));
        prev = name;
    }
    Graph::new("chain", vec![input], nodes, vec![prev]).unwrap()
}

/// The same chain where every layer reads the concatenation of the input
/// and all earlier layer outputs.
pub fn dense_chain(layers: usize, hw: usize, c: usize) -> Graph {
    let input = GraphInput::new("x", TensorShape::new(vec![hw, hw, c]).unwrap(), DType::I8);
    let mut nodes = Vec::new();
    let mut earlier = vec!["x".to_string()];
    for i in 1..=layers {
        let src = if earlier.len() == 1 {
            earlier[0].clone()
        } else {
            let cat = format!("cat{i}");
            nodes.push(OpNode::new(
                cat.clone(),
                OpKind::Concat,
                earlier.clone(),
                OpAttrs::default(),
            ));
            cat
        };
        let name = format!("l{i}");
        nodes.push(OpNode::new(
            name.clone(),
            OpKind::Conv1x1,
            [src],
            OpAttrs::default().out_channels(c),
        ));
        earlier.push(name);
    }
    let last = earlier.pop().unwrap();
    Graph::new("dense", vec![input], nodes, vec![last]).unwrap()
}

/// Random feed-forward conv net over an `[H, W, C]` input that touches every
/// op class: conv, 1x1 conv, depthwise conv, pooling, elementwise (including
/// a residual Add), and a FullyConnected head.
pub fn random_convnet<R: Rng>(rng: &mut R, dtype: DType) -> Graph {
    let (mut h, mut w, mut c) = (
        rng.gen_range(4..=16),
        rng.gen_range(4..=16),
        rng.gen_range(1..=8),
    );
    let input = GraphInput::new("x", TensorShape::new(vec![h, w, c]).unwrap(), dtype);
    let mut nodes = Vec::new();
    let mut prev = "x".to_string();
    let push = |nodes: &mut Vec<OpNode>, kind, ins: Vec<String>, attrs| {
        let name = format!("{}{}", kind_prefix(kind), nodes.len());
        nodes.push(OpNode::new(name.clone(), kind, ins, attrs));
        name
    };
    for _ in 0..rng.gen_range(1..=6) {
        prev = match rng.gen_range(0..6) {
            0 => {
                c = rng.gen_range(1..=8);
                let k = rng.gen_range(1..=3);
                let attrs = OpAttrs::default()
                    .kernel(k, k)
                    .pad(Padding::Same)
                    .out_channels(c);
                push(&mut nodes, OpKind::Conv2D, vec![prev], attrs)
            }
            1 => {
                c = rng.gen_range(1..=8);
                push(
                    &mut nodes,
                    OpKind::Conv1x1,
                    vec![prev],
                    OpAttrs::default().out_channels(c),
                )
            }
            2 => {
                let attrs = OpAttrs::default()
                    .kernel(3, 3)
                    .pad(Padding::Same)
                    .bias(rng.gen_bool(0.5));
                push(&mut nodes, OpKind::DWConv2D, vec![prev], attrs)
            }
            3 if h >= 2 && w >= 2 => {
                let kind = if rng.gen_bool(0.5) {
                    OpKind::MaxPool
                } else {
                    OpKind::AvgPool
                };
                h /= 2;
                w /= 2;
                push(
                    &mut nodes,
                    kind,
                    vec![prev],
                    OpAttrs::default().kernel(2, 2).stride(2, 2),
                )
            }
            4 => {
                let r = push(
                    &mut nodes,
                    OpKind::ReLU,
                    vec![prev.clone()],
                    OpAttrs::default(),
                );
                push(&mut nodes, OpKind::Add, vec![r, prev], OpAttrs::default())
            }
            _ => push(&mut nodes, OpKind::ReLU, vec![prev], OpAttrs::default()),
        };
    }
    let units = rng.gen_range(1..=16);
    let fc = push(
        &mut nodes,
        OpKind::FullyConnected,
        vec![prev],
        OpAttrs::default().units(units),
    );
    let out = push(&mut nodes, OpKind::Softmax, vec![fc], OpAttrs::default());
    Graph::new("convnet", vec![input], nodes, vec![out]).expect("generator builds valid graphs")
}

fn kind_prefix(kind: OpKind) -> &'static str {
    match kind {
        OpKind::Conv2D => "conv",
        OpKind::Conv1x1 => "pw",
        OpKind::DWConv2D => "dw",
        OpKind::FullyConnected => "fc",
        OpKind::MaxPool | OpKind::AvgPool => "pool",
        OpKind::ReLU => "relu",
        OpKind::Add => "add",
        OpKind::Concat => "cat",
        OpKind::Softmax => "softmax",
    }
}
