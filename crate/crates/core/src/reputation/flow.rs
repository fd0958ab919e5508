//! Exact maximum flow on small directed graphs.
//!
//! Dinic's algorithm over integer capacities. Graphs here are trade
//! graphs: a few hundred vertices, capacities that are products of
//! money and ratings, so arithmetic stays in u128 and results are
//! exact.

/// Dinic max-flow. Build once, add edges, then ask for the flow.
pub struct Dinic {
    n: usize,
    /// Edges as (to, capacity); edge i ^ 1 is the reverse of edge i.
    to: Vec<usize>,
    cap: Vec<u128>,
    adj: Vec<Vec<usize>>,
}

impl Dinic {
    pub fn new(n: usize) -> Self {
        Dinic { n, to: Vec::new(), cap: Vec::new(), adj: vec![Vec::new(); n] }
    }

    pub fn add_edge(&mut self, u: usize, v: usize, capacity: u128) {
        assert!(u < self.n && v < self.n, "edge endpoint out of range");
        let e = self.to.len();
        self.to.push(v);
        self.cap.push(capacity);
        self.adj[u].push(e);
        self.to.push(u);
        self.cap.push(0);
        self.adj[v].push(e + 1);
    }

    fn bfs(&self, s: usize, t: usize, level: &mut [u32]) -> bool {
        level.fill(u32::MAX);
        level[s] = 0;
        let mut queue = std::collections::VecDeque::new();
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for &e in &self.adj[u] {
                let v = self.to[e];
                if self.cap[e] > 0 && level[v] == u32::MAX {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        level[t] != u32::MAX
    }

    fn dfs(&mut self, u: usize, t: usize, pushed: u128, level: &[u32], iter: &mut [usize]) -> u128 {
        if u == t {
            return pushed;
        }
        while iter[u] < self.adj[u].len() {
            let e = self.adj[u][iter[u]];
            let v = self.to[e];
            if self.cap[e] > 0 && level[v] == level[u] + 1 {
                let d = self.dfs(v, t, pushed.min(self.cap[e]), level, iter);
                if d > 0 {
                    self.cap[e] -= d;
                    self.cap[e ^ 1] += d;
                    return d;
                }
            }
            iter[u] += 1;
        }
        0
    }

    /// Consumes the residual state; call on a freshly built graph.
    pub fn max_flow(&mut self, s: usize, t: usize) -> u128 {
        if s == t {
            return 0;
        }
        let mut flow = 0u128;
        let mut level = vec![u32::MAX; self.n];
        while self.bfs(s, t, &mut level) {
            let mut iter = vec![0usize; self.n];
            loop {
                let pushed = self.dfs(s, t, u128::MAX, &level, &mut iter);
                if pushed == 0 {
                    break;
                }
                flow += pushed;
            }
        }
        flow
    }
}

/// One-shot max flow over an edge list.
pub fn max_flow(n: usize, edges: &[(usize, usize, u128)], s: usize, t: usize) -> u128 {
    let mut dinic = Dinic::new(n);
    for &(u, v, c) in edges {
        dinic.add_edge(u, v, c);
    }
    dinic.max_flow(s, t)
}

/// Reference answer by exhaustive cut enumeration: the minimum, over
/// every vertex set containing `s` but not `t`, of the capacity
/// leaving the set. Exponential in the vertex count, usable only on
/// tiny graphs, and independent of the flow code above, which is the
/// point: the two must always agree.
pub fn min_cut_by_enumeration(n: usize, edges: &[(usize, usize, u128)], s: usize, t: usize) -> u128 {
    assert!(n <= 20, "enumeration oracle is exponential in n");
    assert!(s < n && t < n && s != t);
    let mut best = u128::MAX;
    for mask in 0u32..(1 << n) {
        if mask & (1 << s) == 0 || mask & (1 << t) != 0 {
            continue;
        }
        let mut cut = 0u128;
        for &(u, v, c) in edges {
            if mask & (1 << u) != 0 && mask & (1 << v) == 0 {
                cut += c;
            }
        }
        best = best.min(cut);
    }
    best
}
