use std::collections::BTreeSet;

use super::{Graph, GraphError};

/// Node names in execution sequence.
pub type ExecutionOrder = Vec<String>;

/// Positions of the graph's nodes sorted by name; enumeration walks ready
/// nodes in this rank so results are independent of file order.
fn name_ranks(g: &Graph) -> (Vec<usize>, Vec<usize>) {
    let mut by_name: Vec<usize> = (0..g.nodes().len()).collect();
    by_name.sort_by(|&a, &b| g.nodes()[a].name.cmp(&g.nodes()[b].name));
    let mut rank = vec![0; by_name.len()];
    for (r, &n) in by_name.iter().enumerate() {
        rank[n] = r;
    }
    (by_name, rank)
}

fn successors(g: &Graph) -> Vec<Vec<usize>> {
    let mut succ = vec![Vec::new(); g.nodes().len()];
    for i in 0..g.nodes().len() {
        for &p in g.predecessors(i) {
            succ[p].push(i);
        }
    }
    succ
}

/// Kahn's algorithm taking the lexicographically smallest ready name each step.
pub fn default_order(g: &Graph) -> ExecutionOrder {
    let (by_name, rank) = name_ranks(g);
    let succ = successors(g);
    let mut indegree: Vec<usize> = (0..g.nodes().len())
        .map(|i| g.predecessors(i).len())
        .collect();
    let mut ready: BTreeSet<usize> = (0..indegree.len())
        .filter(|&i| indegree[i] == 0)
        .map(|i| rank[i])
        .collect();
    let mut order = Vec::with_capacity(indegree.len());
    while let Some(r) = ready.pop_first() {
        let n = by_name[r];
        order.push(g.nodes()[n].name.clone());
        for &s in &succ[n] {
            indegree[s] -= 1;
            if indegree[s] == 0 {
                ready.insert(rank[s]);
            }
        }
    }
    debug_assert_eq!(order.len(), g.nodes().len(), "validated graphs are acyclic");
    order
}

/// Every topological order exactly once, in lexicographic sequence of name
/// lists. Fails as soon as more than `limit` orders exist.
pub fn all_topological_orders(g: &Graph, limit: usize) -> Result<Vec<ExecutionOrder>, GraphError> {
    struct Walk<'a> {
        g: &'a Graph,
        by_name: Vec<usize>,
        succ: Vec<Vec<usize>>,
        indegree: Vec<usize>,
        placed: Vec<bool>,
        prefix: Vec<usize>,
        out: Vec<ExecutionOrder>,
        limit: usize,
    }

    impl Walk<'_> {
        fn run(&mut self) -> Result<(), GraphError> {
            if self.prefix.len() == self.by_name.len() {
                if self.out.len() == self.limit {
                    return Err(GraphError::OrderLimitExceeded { limit: self.limit });
                }
                let names = self
                    .prefix
                    .iter()
                    .map(|&n| self.g.nodes()[n].name.clone())
                    .collect();
                self.out.push(names);
                return Ok(());
            }
            for r in 0..self.by_name.len() {
                let n = self.by_name[r];
                if self.placed[n] || self.indegree[n] != 0 {
                    continue;
                }
                self.placed[n] = true;
                self.prefix.push(n);
                for i in 0..self.succ[n].len() {
                    self.indegree[self.succ[n][i]] -= 1;
                }
                let res = self.run();
                for i in 0..self.succ[n].len() {
                    self.indegree[self.succ[n][i]] += 1;
                }
                self.prefix.pop();
                self.placed[n] = false;
                res?;
            }
            Ok(())
        }
    }

    let (by_name, _) = name_ranks(g);
    let n = by_name.len();
    let mut walk = Walk {
        g,
        by_name,
        succ: successors(g),
        indegree: (0..n).map(|i| g.predecessors(i).len()).collect(),
        placed: vec![false; n],
        prefix: Vec::with_capacity(n),
        out: Vec::new(),
        limit,
    };
    walk.run()?;
    Ok(walk.out)
}

/// Checks that `order` is a permutation of the graph's nodes respecting every
/// dependency. Returns node indices in execution sequence.
pub(crate) fn check_order(g: &Graph, order: &[String]) -> Result<Vec<usize>, GraphError> {
    if order.len() != g.nodes().len() {
        return Err(GraphError::InvalidOrder(format!(
            "order has {} entries, graph has {} nodes",
            order.len(),
            g.nodes().len()
        )));
    }
    let mut position = vec![usize::MAX; order.len()];
    let mut idx = Vec::with_capacity(order.len());
    for (step, name) in order.iter().enumerate() {
        let n = g
            .node_index(name)
            .ok_or_else(|| GraphError::InvalidOrder(format!("unknown node `{name}`")))?;
        if position[n] != usize::MAX {
            return Err(GraphError::InvalidOrder(format!(
                "node `{name}` appears twice"
            )));
        }
        position[n] = step;
        idx.push(n);
    }
    for (step, &n) in idx.iter().enumerate() {
        for &p in g.predecessors(n) {
            if position[p] > step {
                return Err(GraphError::InvalidOrder(format!(
                    "`{}` runs before its producer `{}`",
                    g.nodes()[n].name,
                    g.nodes()[p].name
                )));
            }
        }
    }
    Ok(idx)
}
