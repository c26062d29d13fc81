//! Condition flows on leaky trees.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::model::{CondSpec, Label};

/// A tree with vertices `0..nv`, bounded edges and ends attached to vertices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FlowTree {
    pub nv: usize,
    pub edges: Vec<(usize, usize)>,
    pub ends: Vec<usize>,
}

impl FlowTree {
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.nv];
        for (i, &(a, b)) in self.edges.iter().enumerate() {
            adj[a].push((i, b));
            adj[b].push((i, a));
        }
        adj
    }

    /// Vertices on the `from` side after deleting edge `e`.
    pub fn side(&self, e: usize, from: usize) -> Vec<bool> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.nv];
        let mut stack = vec![from];
        seen[from] = true;
        while let Some(v) = stack.pop() {
            for &(ei, w) in &adj[v] {
                if ei != e && !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen
    }
}

/// Half-edge flows; `into[e] = [flow into edges[e].0, flow into edges[e].1]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FlowGraph {
    pub tree: FlowTree,
    pub end_flows: Vec<u32>,
    pub into: Vec<[u32; 2]>,
    pub leak: Vec<u32>,
}

impl FlowGraph {
    pub fn flow(&self, v: usize) -> u32 {
        let ends: u32 = self.tree.ends.iter().zip(&self.end_flows).filter(|(&u, _)| u == v).map(|(_, f)| f).sum();
        let edges: u32 = self
            .tree
            .edges
            .iter()
            .zip(&self.into)
            .map(|(&(a, b), r)| if a == v { r[0] } else if b == v { r[1] } else { 0 })
            .sum();
        ends + edges
    }

    pub fn with_leak(mut self, leak: Vec<u32>) -> Self {
        self.leak = leak;
        self
    }

    /// Flow into `v` along edge `e`.
    pub fn into_vertex(&self, e: usize, v: usize) -> u32 {
        let (a, _) = self.tree.edges[e];
        if a == v {
            self.into[e][0]
        } else {
            self.into[e][1]
        }
    }
}

/// Spread end flows through the tree until the half-edge flows are stable.
pub fn spread_flows(tree: &FlowTree, end_flows: &[u32]) -> FlowGraph {
    let order: Vec<usize> = (0..tree.nv).collect();
    spread_flows_in_order(tree, end_flows, &order)
}

/// As [`spread_flows`], visiting vertices in the given order each round.
pub fn spread_flows_in_order(tree: &FlowTree, end_flows: &[u32], order: &[usize]) -> FlowGraph {
    assert_eq!(tree.ends.len(), end_flows.len());
    let mut fg = FlowGraph {
        tree: tree.clone(),
        end_flows: end_flows.to_vec(),
        into: vec![[0, 0]; tree.edges.len()],
        leak: vec![0; tree.nv],
    };
    let mut end_in = vec![0u32; tree.nv];
    for (&v, &f) in tree.ends.iter().zip(end_flows) {
        end_in[v] += f;
    }
    let adj = tree.adjacency();
    loop {
        let mut changed = false;
        for &v in order {
            let flow = end_in[v] + adj[v].iter().map(|&(e, _)| fg.into_vertex(e, v)).sum::<u32>();
            for &(e, _) in &adj[v] {
                let inc = fg.into_vertex(e, v);
                let out = if flow > inc { flow - inc - 1 } else { 0 };
                let slot = if tree.edges[e].0 == v { 1 } else { 0 };
                if out > fg.into[e][slot] {
                    fg.into[e][slot] = out;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    fg
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConditionFlowCertificate {
    pub m: u32,
    pub edge_sums: Vec<u32>,
    pub vertex_flows: Vec<u32>,
    pub edge_violations: Vec<usize>,
    pub vertex_violations: Vec<usize>,
}

impl ConditionFlowCertificate {
    pub fn valid(&self) -> bool {
        self.edge_violations.is_empty() && self.vertex_violations.is_empty()
    }
}

/// Check `R(e1)+R(e2) = m-1` on edges and `flow = leak` on vertices.
pub fn validate_condition_flow(fg: &FlowGraph, m: u32) -> ConditionFlowCertificate {
    let edge_sums: Vec<u32> = fg.into.iter().map(|r| r[0] + r[1]).collect();
    let vertex_flows: Vec<u32> = (0..fg.tree.nv).map(|v| fg.flow(v)).collect();
    let edge_violations = edge_sums.iter().enumerate().filter(|(_, &s)| s + 1 != m).map(|(i, _)| i).collect();
    let vertex_violations = vertex_flows
        .iter()
        .zip(&fg.leak)
        .enumerate()
        .filter(|(_, (f, l))| f != l)
        .map(|(i, _)| i)
        .collect();
    ConditionFlowCertificate { m, edge_sums, vertex_flows, edge_violations, vertex_violations }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FlowError {
    #[error("leaks sum to {got}, need (m-1)*#edges = {need}")]
    GlobalSum { got: i64, need: i64 },
    #[error("edge {edge} would carry flow {value} outside [0, m-1]")]
    OutOfRange { edge: usize, value: i64 },
    #[error("unknown end label {0}")]
    UnknownLabel(Label),
}

/// Unique condition flow of type `m` on an end-less tree with given leaks.
pub fn tree_flows_from_leak(nv: usize, edges: &[(usize, usize)], leak: &[u32], m: u32) -> Result<FlowGraph, FlowError> {
    let tree = FlowTree { nv, edges: edges.to_vec(), ends: vec![] };
    let total: i64 = leak.iter().map(|&l| l as i64).sum();
    let need = (m as i64 - 1) * edges.len() as i64;
    if total != need {
        return Err(FlowError::GlobalSum { got: total, need });
    }
    let mut into = Vec::with_capacity(edges.len());
    for (e, &(a, _)) in edges.iter().enumerate() {
        let side_a = tree.side(e, a);
        let entering = |inside: bool| -> i64 {
            let (sum, count) = (0..nv)
                .filter(|&v| side_a[v] == inside)
                .fold((0i64, 0i64), |(s, c), v| (s + leak[v] as i64, c + 1));
            sum - (m as i64 - 1) * (count - 1)
        };
        let (ia, ib) = (entering(true), entering(false));
        for value in [ia, ib] {
            if !(0..m as i64).contains(&value) {
                return Err(FlowError::OutOfRange { edge: e, value });
            }
        }
        into.push([ia as u32, ib as u32]);
    }
    Ok(FlowGraph { tree, end_flows: vec![], into, leak: leak.to_vec() })
}

/// Point ends get `m`, codim-(m-1) tangency ends `m-1`, line ends `m-2`.
pub fn induced_end_flows(spec: &CondSpec, labels: &[Label]) -> Result<BTreeMap<Label, u32>, FlowError> {
    let m = spec.m as u32;
    labels
        .iter()
        .map(|&l| {
            spec.end(l).ok_or(FlowError::UnknownLabel(l))?;
            let f = if spec.points.contains(&l) {
                m
            } else if spec.tangency_p.contains(&l) {
                m - 1
            } else if spec.tangency_l.contains_key(&l) {
                m - 2
            } else {
                0
            };
            Ok((l, f))
        })
        .collect()
}
