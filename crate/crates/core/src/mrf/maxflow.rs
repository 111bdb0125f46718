//! Boykov–Kolmogorov max-flow on integer capacities.
//!
//! Two search trees grow from the terminals, meet along an augmenting path,
//! and are repaired after each augmentation instead of being rebuilt. Nodes
//! carry a signed terminal capacity: positive means residual capacity from
//! the source, negative means residual capacity to the sink.

use std::collections::VecDeque;

const NONE: usize = usize::MAX;
const TERMINAL: usize = usize::MAX - 1;
const ORPHAN: usize = usize::MAX - 2;
const INFINITE_DIST: u32 = u32::MAX;

/// Which side of the minimum cut a node ended up on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    Source,
    Sink,
}

#[derive(Debug, Clone)]
pub struct FlowGraph {
    // Arcs come in pairs; `a ^ 1` is the reverse of `a`.
    head: Vec<usize>,
    next: Vec<usize>,
    cap: Vec<i64>,
    first: Vec<usize>,
    tr_cap: Vec<i64>,
    parent: Vec<usize>,
    in_sink_tree: Vec<bool>,
    active: Vec<bool>,
    ts: Vec<u64>,
    dist: Vec<u32>,
    flow: i64,
    solved: bool,
}

impl FlowGraph {
    pub fn new(nodes: usize) -> Self {
        Self {
            head: Vec::new(),
            next: Vec::new(),
            cap: Vec::new(),
            first: vec![NONE; nodes],
            tr_cap: vec![0; nodes],
            parent: vec![NONE; nodes],
            in_sink_tree: vec![false; nodes],
            active: vec![false; nodes],
            ts: vec![0; nodes],
            dist: vec![0; nodes],
            flow: 0,
            solved: false,
        }
    }

    pub fn with_capacity(nodes: usize, edges: usize) -> Self {
        let mut g = Self::new(nodes);
        g.head.reserve(2 * edges);
        g.next.reserve(2 * edges);
        g.cap.reserve(2 * edges);
        g
    }

    pub fn node_count(&self) -> usize {
        self.first.len()
    }

    /// Adds terminal capacities `source → node` and `node → sink`.
    pub fn add_tedge(&mut self, node: usize, to_source: i64, to_sink: i64) {
        assert!(
            to_source >= 0 && to_sink >= 0,
            "capacities must be non-negative"
        );
        let (mut src, mut snk) = (to_source, to_sink);
        let prev = self.tr_cap[node];
        if prev > 0 {
            src += prev;
        } else {
            snk -= prev;
        }
        // Both arcs are always cut together up to their common part.
        self.flow += src.min(snk);
        self.tr_cap[node] = src - snk;
    }

    /// Adds arcs `p → q` with capacity `cap_pq` and `q → p` with `cap_qp`.
    pub fn add_edge(&mut self, p: usize, q: usize, cap_pq: i64, cap_qp: i64) {
        assert!(
            cap_pq >= 0 && cap_qp >= 0,
            "capacities must be non-negative"
        );
        assert!(p != q, "self loops are not allowed");
        let a = self.head.len();
        self.head.push(q);
        self.next.push(self.first[p]);
        self.cap.push(cap_pq);
        self.first[p] = a;
        self.head.push(p);
        self.next.push(self.first[q]);
        self.cap.push(cap_qp);
        self.first[q] = a + 1;
    }

    fn arcs(&self, node: usize) -> ArcIter<'_> {
        ArcIter {
            next: &self.next,
            cur: self.first[node],
        }
    }

    fn set_active(&mut self, queue: &mut VecDeque<usize>, node: usize) {
        if !self.active[node] {
            self.active[node] = true;
            queue.push_back(node);
        }
    }

    /// Computes the maximum flow, which equals the minimum cut value.
    pub fn maxflow(&mut self) -> i64 {
        assert!(!self.solved, "maxflow may only run once per graph");
        self.solved = true;
        let n = self.node_count();
        let mut queue = VecDeque::new();
        for i in 0..n {
            if self.tr_cap[i] != 0 {
                self.in_sink_tree[i] = self.tr_cap[i] < 0;
                self.parent[i] = TERMINAL;
                self.dist[i] = 1;
                self.set_active(&mut queue, i);
            }
        }
        let mut orphans: VecDeque<usize> = VecDeque::new();
        let mut time: u64 = 0;

        while let Some(i) = queue.pop_front() {
            self.active[i] = false;
            if self.parent[i] == NONE {
                continue;
            }
            let Some(middle) = self.grow(i, &mut queue) else {
                continue;
            };
            time += 1;
            self.augment(middle, &mut orphans);
            while let Some(o) = orphans.pop_front() {
                self.adopt(o, time, &mut queue, &mut orphans);
            }
            if self.parent[i] != NONE && !self.active[i] {
                self.active[i] = true;
                queue.push_front(i);
            }
        }
        self.flow
    }

    /// Expands the tree containing `i` by one layer. Returns an arc running
    /// from the source tree into the sink tree when the trees touch.
    fn grow(&mut self, i: usize, queue: &mut VecDeque<usize>) -> Option<usize> {
        let sink_side = self.in_sink_tree[i];
        let mut a = self.first[i];
        while a != NONE {
            let j = self.head[a];
            let residual = if sink_side {
                self.cap[a ^ 1]
            } else {
                self.cap[a]
            };
            if residual > 0 {
                if self.parent[j] == NONE {
                    self.in_sink_tree[j] = sink_side;
                    self.parent[j] = a ^ 1;
                    self.ts[j] = self.ts[i];
                    self.dist[j] = self.dist[i] + 1;
                    self.set_active(queue, j);
                } else if self.in_sink_tree[j] != sink_side {
                    return Some(if sink_side { a ^ 1 } else { a });
                } else if self.ts[j] <= self.ts[i] && self.dist[j] > self.dist[i] {
                    self.parent[j] = a ^ 1;
                    self.ts[j] = self.ts[i];
                    self.dist[j] = self.dist[i] + 1;
                }
            }
            a = self.next[a];
        }
        None
    }

    fn augment(&mut self, middle: usize, orphans: &mut VecDeque<usize>) {
        let mut bottleneck = self.cap[middle];
        // Source side: flow runs parent → node, i.e. along `parent ^ 1`.
        let mut i = self.head[middle ^ 1];
        while self.parent[i] != TERMINAL {
            let a = self.parent[i];
            bottleneck = bottleneck.min(self.cap[a ^ 1]);
            i = self.head[a];
        }
        bottleneck = bottleneck.min(self.tr_cap[i]);
        // Sink side: flow runs node → parent.
        let mut j = self.head[middle];
        while self.parent[j] != TERMINAL {
            let a = self.parent[j];
            bottleneck = bottleneck.min(self.cap[a]);
            j = self.head[a];
        }
        bottleneck = bottleneck.min(-self.tr_cap[j]);

        self.cap[middle ^ 1] += bottleneck;
        self.cap[middle] -= bottleneck;
        let mut i = self.head[middle ^ 1];
        while self.parent[i] != TERMINAL {
            let a = self.parent[i];
            self.cap[a] += bottleneck;
            self.cap[a ^ 1] -= bottleneck;
            let up = self.head[a];
            if self.cap[a ^ 1] == 0 {
                self.parent[i] = ORPHAN;
                orphans.push_front(i);
            }
            i = up;
        }
        self.tr_cap[i] -= bottleneck;
        if self.tr_cap[i] == 0 {
            self.parent[i] = ORPHAN;
            orphans.push_front(i);
        }
        let mut j = self.head[middle];
        while self.parent[j] != TERMINAL {
            let a = self.parent[j];
            self.cap[a ^ 1] += bottleneck;
            self.cap[a] -= bottleneck;
            let up = self.head[a];
            if self.cap[a] == 0 {
                self.parent[j] = ORPHAN;
                orphans.push_front(j);
            }
            j = up;
        }
        self.tr_cap[j] += bottleneck;
        if self.tr_cap[j] == 0 {
            self.parent[j] = ORPHAN;
            orphans.push_front(j);
        }
        self.flow += bottleneck;
    }

    /// Distance from `j` to its terminal along parent links, or `None` when
    /// the chain ends in an orphan. Caches distances stamped with `time`.
    fn origin_distance(&mut self, j: usize, time: u64) -> Option<u32> {
        let mut d: u32 = 0;
        let mut k = j;
        loop {
            if self.ts[k] == time {
                d += self.dist[k];
                break;
            }
            let a = self.parent[k];
            d += 1;
            if a == TERMINAL {
                self.ts[k] = time;
                self.dist[k] = 1;
                break;
            }
            if a == ORPHAN || a == NONE {
                return None;
            }
            k = self.head[a];
        }
        let found = d;
        let mut k = j;
        while self.ts[k] != time {
            self.ts[k] = time;
            self.dist[k] = d;
            d -= 1;
            k = self.head[self.parent[k]];
        }
        Some(found)
    }

    fn adopt(
        &mut self,
        i: usize,
        time: u64,
        queue: &mut VecDeque<usize>,
        orphans: &mut VecDeque<usize>,
    ) {
        let sink_side = self.in_sink_tree[i];
        let mut best_arc = NONE;
        let mut best_dist = INFINITE_DIST;
        let mut a = self.first[i];
        while a != NONE {
            let j = self.head[a];
            // Residual capacity from the candidate parent towards `i`.
            let residual = if sink_side {
                self.cap[a]
            } else {
                self.cap[a ^ 1]
            };
            if residual > 0 && self.in_sink_tree[j] == sink_side && self.parent[j] != NONE {
                if let Some(d) = self.origin_distance(j, time) {
                    if d < best_dist {
                        best_dist = d;
                        best_arc = a;
                    }
                }
            }
            a = self.next[a];
        }

        if best_arc != NONE {
            self.parent[i] = best_arc;
            self.ts[i] = time;
            self.dist[i] = best_dist + 1;
            return;
        }

        self.parent[i] = NONE;
        let arcs: Vec<usize> = self.arcs(i).collect();
        for a in arcs {
            let j = self.head[a];
            if self.in_sink_tree[j] != sink_side || self.parent[j] == NONE {
                continue;
            }
            let residual = if sink_side {
                self.cap[a]
            } else {
                self.cap[a ^ 1]
            };
            if residual > 0 {
                self.set_active(queue, j);
            }
            let pa = self.parent[j];
            if pa != TERMINAL && pa != ORPHAN && self.head[pa] == i {
                self.parent[j] = ORPHAN;
                orphans.push_back(j);
            }
        }
    }

    /// Side of the minimum cut for `node`. Nodes reachable from neither
    /// terminal are reported on the source side.
    pub fn segment(&self, node: usize) -> Segment {
        if self.parent[node] != NONE && self.in_sink_tree[node] {
            Segment::Sink
        } else {
            Segment::Source
        }
    }
}

struct ArcIter<'a> {
    next: &'a [usize],
    cur: usize,
}

impl Iterator for ArcIter<'_> {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.cur == NONE {
            return None;
        }
        let a = self.cur;
        self.cur = self.next[a];
        Some(a)
    }
}
