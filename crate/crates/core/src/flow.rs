//! Dinic max-flow on small integer-capacity networks.

use std::collections::VecDeque;

#[derive(Clone, Debug)]
struct Edge {
    to: usize,
    cap: u64,
}

#[derive(Clone, Debug)]
pub(crate) struct FlowNetwork {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
    level: Vec<i64>,
    next: Vec<usize>,
}

impl FlowNetwork {
    pub(crate) fn new(nodes: usize) -> Self {
        FlowNetwork {
            edges: Vec::new(),
            adj: vec![Vec::new(); nodes],
            level: vec![-1; nodes],
            next: vec![0; nodes],
        }
    }

    pub(crate) fn add_edge(&mut self, from: usize, to: usize, cap: u64) {
        self.adj[from].push(self.edges.len());
        self.edges.push(Edge { to, cap });
        self.adj[to].push(self.edges.len());
        self.edges.push(Edge { to: from, cap: 0 });
    }

    fn bfs(&mut self, s: usize, t: usize) -> bool {
        self.level.iter_mut().for_each(|l| *l = -1);
        self.level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &id in &self.adj[u] {
                let e = &self.edges[id];
                if e.cap > 0 && self.level[e.to] < 0 {
                    self.level[e.to] = self.level[u] + 1;
                    queue.push_back(e.to);
                }
            }
        }
        self.level[t] >= 0
    }

    // Iterative augmenting-path search along the level graph.
    fn dfs(&mut self, s: usize, t: usize) -> u64 {
        let mut path: Vec<usize> = Vec::new();
        let mut u = s;
        loop {
            if u == t {
                let push = path.iter().map(|&id| self.edges[id].cap).min().unwrap_or(0);
                for &id in &path {
                    self.edges[id].cap -= push;
                    self.edges[id ^ 1].cap += push;
                }
                return push;
            }
            let mut advanced = false;
            while self.next[u] < self.adj[u].len() {
                let id = self.adj[u][self.next[u]];
                let e = &self.edges[id];
                if e.cap > 0 && self.level[e.to] == self.level[u] + 1 {
                    path.push(id);
                    u = e.to;
                    advanced = true;
                    break;
                }
                self.next[u] += 1;
            }
            if !advanced {
                if u == s {
                    return 0;
                }
                // dead end: retreat and skip this edge
                self.level[u] = -1;
                let id = path.pop().expect("non-source node has a parent edge");
                u = self.edges[id ^ 1].to;
                self.next[u] += 1;
            }
        }
    }

    pub(crate) fn max_flow(&mut self, s: usize, t: usize) -> u64 {
        let mut total = 0;
        while self.bfs(s, t) {
            self.next.iter_mut().for_each(|n| *n = 0);
            loop {
                let f = self.dfs(s, t);
                if f == 0 {
                    break;
                }
                total += f;
            }
        }
        total
    }
}

/// Can each set `i` keep `demand[i]` of its own points with every point used at most once?
pub(crate) fn feasible_assignment(sets: &[Vec<usize>], demand: &[u64], universe: usize) -> bool {
    let k = sets.len();
    let s = k + universe;
    let t = s + 1;
    let mut net = FlowNetwork::new(t + 1);
    let mut need = 0;
    for (i, set) in sets.iter().enumerate() {
        net.add_edge(s, i, demand[i]);
        need += demand[i];
        for &x in set {
            net.add_edge(i, k + x, 1);
        }
    }
    for x in 0..universe {
        net.add_edge(k + x, t, 1);
    }
    net.max_flow(s, t) == need
}
