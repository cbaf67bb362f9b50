//! Feasibility of a sparse capacitated assignment via Dinic max-flow.

use std::collections::VecDeque;

struct Edge {
    to: u32,
    cap: u32,
}

struct Graph {
    edges: Vec<Edge>,
    adj: Vec<Vec<u32>>,
}

impl Graph {
    fn new(n: usize) -> Self {
        Self { edges: Vec::new(), adj: vec![Vec::new(); n] }
    }

    fn add(&mut self, a: usize, b: usize, cap: u32) {
        self.adj[a].push(self.edges.len() as u32);
        self.edges.push(Edge { to: b as u32, cap });
        self.adj[b].push(self.edges.len() as u32);
        self.edges.push(Edge { to: a as u32, cap: 0 });
    }

    fn levels(&self, s: usize, t: usize) -> Option<Vec<i32>> {
        let mut level = vec![-1; self.adj.len()];
        level[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for &e in &self.adj[u] {
                let e = &self.edges[e as usize];
                if e.cap > 0 && level[e.to as usize] < 0 {
                    level[e.to as usize] = level[u] + 1;
                    q.push_back(e.to as usize);
                }
            }
        }
        (level[t] >= 0).then_some(level)
    }

    /// One blocking flow, with an explicit stack so long alternating paths
    /// cannot overflow the call stack.
    fn blocking(&mut self, s: usize, t: usize, level: &[i32]) -> u64 {
        let mut next = vec![0usize; self.adj.len()];
        let mut total = 0u64;
        loop {
            let mut path: Vec<u32> = Vec::new();
            let mut u = s;
            loop {
                if u == t {
                    break;
                }
                let mut advanced = false;
                while next[u] < self.adj[u].len() {
                    let eid = self.adj[u][next[u]];
                    let e = &self.edges[eid as usize];
                    if e.cap > 0 && level[e.to as usize] == level[u] + 1 {
                        path.push(eid);
                        u = e.to as usize;
                        advanced = true;
                        break;
                    }
                    next[u] += 1;
                }
                if !advanced {
                    if u == s {
                        return total;
                    }
                    // dead end: retreat and skip the edge that led here
                    let eid = path.pop().unwrap();
                    u = self.edges[(eid ^ 1) as usize].to as usize;
                    next[u] += 1;
                }
            }
            let push = path.iter().map(|&e| self.edges[e as usize].cap).min().unwrap();
            for &e in &path {
                self.edges[e as usize].cap -= push;
                self.edges[(e ^ 1) as usize].cap += push;
            }
            total += u64::from(push);
        }
    }
}

/// Whether every bidder can be matched to a candidate object without
/// exceeding the object capacities.
pub(crate) fn feasible(cand: &[Vec<(u32, f64)>], caps: &[u32]) -> bool {
    let n = cand.len();
    let a = caps.len();
    let (s, t) = (n + a, n + a + 1);
    let mut g = Graph::new(n + a + 2);
    for (j, c) in cand.iter().enumerate() {
        g.add(s, j, 1);
        for &(i, _) in c {
            g.add(j, n + i as usize, 1);
        }
    }
    for (i, &k) in caps.iter().enumerate() {
        g.add(n + i, t, k);
    }
    let mut flow = 0u64;
    while let Some(level) = g.levels(s, t) {
        flow += g.blocking(s, t, &level);
    }
    flow == n as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hall_violation_is_detected() {
        // three bidders all restricted to one object of capacity two
        let cand = vec![vec![(0, 0.0)], vec![(0, 0.0)], vec![(0, 0.0), (1, 0.0)]];
        assert!(feasible(&cand, &[2, 1]));
        let cand = vec![vec![(0, 0.0)], vec![(0, 0.0)], vec![(0, 0.0)]];
        assert!(!feasible(&cand, &[2, 1]));
    }

    #[test]
    fn needs_augmenting_path() {
        // greedy would put bidder 0 on object 0 and strand bidder 1
        let cand = vec![vec![(0, 0.0), (1, 0.0)], vec![(0, 0.0)]];
        assert!(feasible(&cand, &[1, 1]));
    }
}
