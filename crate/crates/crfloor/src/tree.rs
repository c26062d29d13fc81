//! Rooted view of a small tree given by an edge list.

pub const NONE: usize = usize::MAX;

#[derive(Clone, Debug)]
pub struct Rooted {
    pub root: usize,
    pub parent: Vec<usize>,
    pub parent_edge: Vec<usize>,
    pub depth: Vec<usize>,
    /// BFS order starting at the root.
    pub order: Vec<usize>,
    pub adj: Vec<Vec<(usize, usize)>>,
}

/// Where an endpoint sits as seen from a vertex.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Branch {
    /// The endpoint is attached at the vertex itself (tagged by caller id).
    Here(usize),
    /// Reached through the given incident edge.
    Via(usize),
}

impl Rooted {
    pub fn new(nv: usize, edges: &[(usize, usize)], root: usize) -> Rooted {
        let mut adj = vec![Vec::new(); nv];
        for (i, &(a, b)) in edges.iter().enumerate() {
            adj[a].push((i, b));
            adj[b].push((i, a));
        }
        let mut parent = vec![NONE; nv];
        let mut parent_edge = vec![NONE; nv];
        let mut depth = vec![0; nv];
        let mut order = Vec::with_capacity(nv);
        let mut seen = vec![false; nv];
        if nv > 0 {
            seen[root] = true;
            order.push(root);
            let mut i = 0;
            while i < order.len() {
                let v = order[i];
                i += 1;
                for &(e, w) in &adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        parent[w] = v;
                        parent_edge[w] = e;
                        depth[w] = depth[v] + 1;
                        order.push(w);
                    }
                }
            }
        }
        assert_eq!(order.len(), nv, "edge list is not a connected tree");
        Rooted { root, parent, parent_edge, depth, order, adj }
    }

    /// Incident edge of `v` leading towards `x`, or `None` if `x == v`.
    pub fn toward(&self, v: usize, x: usize) -> Option<usize> {
        if v == x {
            return None;
        }
        if self.depth[x] > self.depth[v] {
            let mut u = x;
            while self.depth[u] > self.depth[v] + 1 {
                u = self.parent[u];
            }
            if self.parent[u] == v {
                return Some(self.parent_edge[u]);
            }
        }
        Some(self.parent_edge[v])
    }

    /// Edges on the path between `a` and `b`.
    pub fn path_edges(&self, a: usize, b: usize) -> Vec<usize> {
        let (mut a, mut b) = (a, b);
        let mut left = Vec::new();
        let mut right = Vec::new();
        while self.depth[a] > self.depth[b] {
            left.push(self.parent_edge[a]);
            a = self.parent[a];
        }
        while self.depth[b] > self.depth[a] {
            right.push(self.parent_edge[b]);
            b = self.parent[b];
        }
        while a != b {
            left.push(self.parent_edge[a]);
            right.push(self.parent_edge[b]);
            a = self.parent[a];
            b = self.parent[b];
        }
        right.reverse();
        left.extend(right);
        left
    }

    /// Vertices on the path between `a` and `b` (inclusive).
    pub fn path_vertices(&self, a: usize, b: usize) -> Vec<usize> {
        let (mut a, mut b) = (a, b);
        let mut left = vec![a];
        let mut right = vec![b];
        while self.depth[a] > self.depth[b] {
            a = self.parent[a];
            left.push(a);
        }
        while self.depth[b] > self.depth[a] {
            b = self.parent[b];
            right.push(b);
        }
        while a != b {
            a = self.parent[a];
            b = self.parent[b];
            left.push(a);
            right.push(b);
        }
        right.pop();
        right.reverse();
        left.extend(right);
        left.dedup();
        left
    }

    /// Edges from the root down to `v`.
    pub fn root_path(&self, v: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.depth[v]);
        let mut u = v;
        while u != self.root {
            out.push(self.parent_edge[u]);
            u = self.parent[u];
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paths_on_a_caterpillar() {
        // 0 - 1 - 2 - 3, with 4 hanging off 1
        let r = Rooted::new(5, &[(0, 1), (1, 2), (2, 3), (1, 4)], 2);
        assert_eq!(r.path_edges(0, 3), vec![0, 1, 2]);
        assert_eq!(r.path_vertices(4, 3), vec![4, 1, 2, 3]);
        assert_eq!(r.toward(1, 3), Some(1));
        assert_eq!(r.toward(1, 0), Some(0));
        assert_eq!(r.toward(2, 0), Some(1));
        assert_eq!(r.toward(3, 3), None);
        assert_eq!(r.root_path(0), vec![0, 1]);
    }
}
