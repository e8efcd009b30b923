// SPDX-License-Identifier: Apache-2.0

//! Dinic max-flow and minimum-weight closure over small graphs.

use std::collections::VecDeque;

const INF: i64 = i64::MAX / 4;

struct Edge {
    to: usize,
    cap: i64,
}

pub(crate) struct FlowGraph {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

impl FlowGraph {
    pub fn new(nodes: usize) -> Self {
        FlowGraph { edges: Vec::new(), adj: vec![Vec::new(); nodes] }
    }

    pub fn add_edge(&mut self, from: usize, to: usize, cap: i64) {
        self.adj[from].push(self.edges.len());
        self.edges.push(Edge { to, cap });
        self.adj[to].push(self.edges.len());
        self.edges.push(Edge { to: from, cap: 0 });
    }

    fn levels(&self, s: usize) -> Vec<i32> {
        let mut level = vec![-1; self.adj.len()];
        level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &e in &self.adj[u] {
                let edge = &self.edges[e];
                if edge.cap > 0 && level[edge.to] < 0 {
                    level[edge.to] = level[u] + 1;
                    queue.push_back(edge.to);
                }
            }
        }
        level
    }

    fn augment(&mut self, u: usize, t: usize, pushed: i64, level: &[i32], next: &mut [usize]) -> i64 {
        if u == t {
            return pushed;
        }
        while next[u] < self.adj[u].len() {
            let e = self.adj[u][next[u]];
            let (to, cap) = (self.edges[e].to, self.edges[e].cap);
            if cap > 0 && level[to] == level[u] + 1 {
                let got = self.augment(to, t, pushed.min(cap), level, next);
                if got > 0 {
                    self.edges[e].cap -= got;
                    self.edges[e ^ 1].cap += got;
                    return got;
                }
            }
            next[u] += 1;
        }
        0
    }

    /// Runs max-flow and returns the source side of a minimum cut.
    pub fn min_cut_source_side(&mut self, s: usize, t: usize) -> Vec<bool> {
        loop {
            let level = self.levels(s);
            if level[t] < 0 {
                return level.iter().map(|&l| l >= 0).collect();
            }
            let mut next = vec![0; self.adj.len()];
            while self.augment(s, t, INF, &level, &mut next) > 0 {}
        }
    }
}

/// Minimum-weight closure: choose a set of items closed under `implies`
/// (choosing `a` forces `b`) that minimizes the summed weights, honoring
/// items forced in or out. Returns the membership of every item.
pub(crate) fn min_weight_closure(
    weights: &[i64],
    implies: &[(usize, usize)],
    forced_in: &[usize],
    forced_out: &[usize],
) -> Vec<bool> {
    let n = weights.len();
    let (s, t) = (n, n + 1);
    let mut g = FlowGraph::new(n + 2);
    for (i, &w) in weights.iter().enumerate() {
        if w < 0 {
            g.add_edge(s, i, -w);
        } else if w > 0 {
            g.add_edge(i, t, w);
        }
    }
    for &(a, b) in implies {
        g.add_edge(a, b, INF);
    }
    for &i in forced_in {
        g.add_edge(s, i, INF);
    }
    for &i in forced_out {
        g.add_edge(i, t, INF);
    }
    let mut side = g.min_cut_source_side(s, t);
    side.truncate(n);
    side
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_flow_on_a_diamond() {
        let mut g = FlowGraph::new(4);
        g.add_edge(0, 1, 3);
        g.add_edge(0, 2, 2);
        g.add_edge(1, 3, 2);
        g.add_edge(2, 3, 3);
        g.add_edge(1, 2, 5);
        let side = g.min_cut_source_side(0, 3);
        assert!(side[0] && !side[3]);
        // residual capacity out of the source side must be zero
        let crossing: i64 = g
            .adj
            .iter()
            .enumerate()
            .filter(|(u, _)| side[*u])
            .flat_map(|(_, es)| es.iter())
            .filter(|&&e| e % 2 == 0 && !side[g.edges[e].to])
            .map(|&e| g.edges[e].cap)
            .sum();
        assert_eq!(crossing, 0);
    }

    #[test]
    fn closure_prefers_profitable_items() {
        // item 0 pays 5 but drags in item 1 costing 3; item 2 costs 1 alone
        let chosen = min_weight_closure(&[-5, 3, 1], &[(0, 1)], &[], &[]);
        assert_eq!(chosen, vec![true, true, false]);
        let chosen = min_weight_closure(&[-2, 3, 1], &[(0, 1)], &[2], &[]);
        assert_eq!(chosen, vec![false, false, true]);
    }
}
