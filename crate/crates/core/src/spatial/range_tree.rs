//! Static 2D range tree over points.
//!
//! The primary structure is a balanced binary tree over the points in
//! x-order. Every node owns the y-sorted list of the points in its subtree;
//! lists for one depth are stored side by side in a single array so a node
//! covering x-ranks `[lo, hi)` at depth `d` finds its list at
//! `levels[d][lo..hi]`.

use crate::geom::{Aabb, Vec2};

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    y: f64,
    id: u32,
}

#[derive(Debug, Clone, Default)]
pub struct RangeTree {
    points: Vec<Vec2>,
    /// Point ids ordered by (x, id).
    by_x: Vec<u32>,
    xs: Vec<f64>,
    levels: Vec<Vec<Entry>>,
}

/// Work done by one query, for complexity audits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QueryStats {
    /// Primary-tree nodes touched, plus binary-search probes.
    pub visits: usize,
    pub reported: usize,
}

impl RangeTree {
    pub fn build(points: &[Vec2]) -> RangeTree {
        let n = points.len();
        assert!(n < u32::MAX as usize, "too many points");
        let mut by_x: Vec<u32> = (0..n as u32).collect();
        by_x.sort_unstable_by(|&a, &b| points[a as usize].x.total_cmp(&points[b as usize].x).then(a.cmp(&b)));
        let xs = by_x.iter().map(|&i| points[i as usize].x).collect();
        let depth = if n <= 1 { 1 } else { (usize::BITS - (n - 1).leading_zeros()) as usize + 1 };
        let mut tree = RangeTree {
            points: points.to_vec(),
            by_x,
            xs,
            levels: vec![vec![Entry { y: 0.0, id: 0 }; n]; if n == 0 { 0 } else { depth }],
        };
        if n > 0 {
            tree.build_node(0, 0, n);
        }
        tree
    }

    fn build_node(&mut self, d: usize, lo: usize, hi: usize) {
        if hi - lo == 1 {
            let id = self.by_x[lo];
            self.levels[d][lo] = Entry { y: self.points[id as usize].y, id };
            return;
        }
        let mid = lo + (hi - lo) / 2;
        self.build_node(d + 1, lo, mid);
        self.build_node(d + 1, mid, hi);
        let (upper, lower) = self.levels.split_at_mut(d + 1);
        let dst = &mut upper[d][lo..hi];
        let src = &lower[0];
        let (mut i, mut j, mut k) = (lo, mid, 0);
        while i < mid && j < hi {
            let (a, b) = (src[i], src[j]);
            if (a.y, a.id) <= (b.y, b.id) {
                dst[k] = a;
                i += 1;
            } else {
                dst[k] = b;
                j += 1;
            }
            k += 1;
        }
        for e in src[i..mid].iter().chain(&src[j..hi]) {
            dst[k] = *e;
            k += 1;
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, id: usize) -> Vec2 {
        self.points[id]
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    /// Ids of points inside the closed box `q`, ascending.
    pub fn query(&self, q: &Aabb) -> Vec<usize> {
        let mut out = Vec::new();
        self.query_with_stats(q, &mut out);
        out.sort_unstable();
        out
    }

    /// Appends matching ids to `out` (unordered) and reports the work done.
    pub fn query_with_stats(&self, q: &Aabb, out: &mut Vec<usize>) -> QueryStats {
        let mut stats = QueryStats::default();
        let n = self.points.len();
        if n == 0 || q.is_empty() {
            return stats;
        }
        let i = self.xs.partition_point(|&x| x < q.min.x);
        let j = self.xs.partition_point(|&x| x <= q.max.x);
        stats.visits += 2 * (usize::BITS - n.leading_zeros()) as usize;
        if i >= j {
            return stats;
        }
        let before = out.len();
        self.collect(0, 0, n, i, j, q, out, &mut stats);
        stats.reported = out.len() - before;
        stats
    }

    #[allow(clippy::too_many_arguments)]
    fn collect(&self, d: usize, lo: usize, hi: usize, i: usize, j: usize, q: &Aabb, out: &mut Vec<usize>, stats: &mut QueryStats) {
        stats.visits += 1;
        if hi <= i || lo >= j {
            return;
        }
        if i <= lo && hi <= j {
            let list = &self.levels[d][lo..hi];
            let a = list.partition_point(|e| e.y < q.min.y);
            let b = list.partition_point(|e| e.y <= q.max.y);
            stats.visits += 2 * (usize::BITS - list.len().leading_zeros()) as usize;
            out.extend(list[a..b.max(a)].iter().map(|e| e.id as usize));
            return;
        }
        let mid = lo + (hi - lo) / 2;
        self.collect(d + 1, lo, mid, i, j, q, out, stats);
        self.collect(d + 1, mid, hi, i, j, q, out, stats);
    }
}
