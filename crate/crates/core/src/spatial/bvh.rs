//! Bounding volume hierarchy built by approximate agglomerative clustering.
//!
//! Primitives are ordered along a Morton curve and split recursively on
//! Morton bits until a partition holds at most [`LEAF_CLUSTER`] items. Each
//! level then merges its clusters greedily (cheapest union first) down to a
//! budget that grows sublinearly with the partition size, and the final
//! level merges everything into a single root.

use crate::geom::{Aabb, Vec2};

const LEAF_CLUSTER: usize = 4;
/// Cluster budget `f(n) = ceil(C * n^ALPHA)`.
const BUDGET_C: f64 = 0.758;
const BUDGET_ALPHA: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeKind {
    Leaf(usize),
    Internal(u32, u32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BvhNode {
    pub aabb: Aabb,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, Default)]
pub struct Bvh {
    nodes: Vec<BvhNode>,
    leaf_boxes: Vec<Aabb>,
    root: Option<u32>,
}

impl Bvh {
    /// Builds the hierarchy. Leaf `i` refers to `boxes[i]`.
    pub fn build(boxes: &[Aabb]) -> Bvh {
        let mut bvh = Bvh {
            nodes: Vec::with_capacity(boxes.len().saturating_mul(2)),
            leaf_boxes: boxes.to_vec(),
            root: None,
        };
        if boxes.is_empty() {
            return bvh;
        }
        let scene = boxes.iter().fold(Aabb::EMPTY, |acc, b| acc.union(*b));
        let mut order: Vec<(u32, usize)> =
            boxes.iter().enumerate().map(|(i, b)| (morton_code(b.center(), &scene), i)).collect();
        order.sort_unstable();
        let clusters = bvh.build_partition(&order, 31);
        let root = bvh.combine(clusters, 1);
        bvh.root = Some(root[0]);
        bvh
    }

    fn build_partition(&mut self, prims: &[(u32, usize)], bit: i32) -> Vec<u32> {
        if prims.len() <= LEAF_CLUSTER {
            let leaves: Vec<u32> = prims
                .iter()
                .map(|&(_, i)| self.push(BvhNode { aabb: self.leaf_boxes[i], kind: NodeKind::Leaf(i) }))
                .collect();
            return self.combine(leaves, budget(LEAF_CLUSTER));
        }
        let (left, right) = split_on_bit(prims, bit);
        let next = bit - 1;
        let mut clusters = self.build_partition(left, next);
        clusters.extend(self.build_partition(right, next));
        self.combine(clusters, budget(prims.len()))
    }

    /// Greedy pairwise merging until at most `target` clusters remain.
    fn combine(&mut self, mut clusters: Vec<u32>, target: usize) -> Vec<u32> {
        let target = target.max(1);
        if clusters.len() <= target {
            return clusters;
        }
        // Nearest neighbour (by union half-perimeter) for each cluster.
        let cost = |nodes: &[BvhNode], a: u32, b: u32| nodes[a as usize].aabb.union(nodes[b as usize].aabb).half_perimeter();
        let best_for = |nodes: &[BvhNode], clusters: &[u32], i: usize| -> (usize, f64) {
            let mut best = (usize::MAX, f64::INFINITY);
            for (j, &c) in clusters.iter().enumerate() {
                if j != i {
                    let d = cost(nodes, clusters[i], c);
                    if d < best.1 {
                        best = (j, d);
                    }
                }
            }
            best
        };
        let mut nearest: Vec<(usize, f64)> = (0..clusters.len()).map(|i| best_for(&self.nodes, &clusters, i)).collect();
        while clusters.len() > target {
            let i = nearest
                .iter()
                .enumerate()
                .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1).then(a.0.cmp(&b.0)))
                .map(|(i, _)| i)
                .expect("non-empty");
            let j = nearest[i].0;
            let (lo, hi) = if i < j { (i, j) } else { (j, i) };
            let a = clusters[lo];
            let b = clusters[hi];
            let merged = self.push(BvhNode {
                aabb: self.nodes[a as usize].aabb.union(self.nodes[b as usize].aabb),
                kind: NodeKind::Internal(a, b),
            });
            let last = clusters.len() - 1;
            clusters[lo] = merged;
            clusters.swap_remove(hi);
            nearest.swap_remove(hi);
            if clusters.len() == 1 {
                break;
            }
            for k in 0..clusters.len() {
                let n = nearest[k].0;
                if k == lo || n == lo || n == hi {
                    nearest[k] = best_for(&self.nodes, &clusters, k);
                    continue;
                }
                if n == last {
                    // swap_remove moved the last cluster into slot `hi`.
                    nearest[k].0 = hi;
                }
                let d = cost(&self.nodes, clusters[k], merged);
                if d < nearest[k].1 {
                    nearest[k] = (lo, d);
                }
            }
        }
        clusters
    }

    fn push(&mut self, node: BvhNode) -> u32 {
        self.nodes.push(node);
        (self.nodes.len() - 1) as u32
    }

    pub fn is_empty(&self) -> bool {
        self.root.is_none()
    }

    pub fn len(&self) -> usize {
        self.leaf_boxes.len()
    }

    pub fn root_aabb(&self) -> Option<Aabb> {
        self.root.map(|r| self.nodes[r as usize].aabb)
    }

    pub fn nodes(&self) -> &[BvhNode] {
        &self.nodes
    }

    pub fn root(&self) -> Option<u32> {
        self.root
    }

    /// Indices of all stored boxes intersecting `q`, in ascending order.
    pub fn query(&self, q: &Aabb) -> Vec<usize> {
        let mut out = Vec::new();
        self.query_into(q, &mut out);
        out.sort_unstable();
        out
    }

    /// Appends hits to `out` in traversal order.
    pub fn query_into(&self, q: &Aabb, out: &mut Vec<usize>) {
        let Some(root) = self.root else { return };
        let mut stack: Vec<u32> = Vec::with_capacity(32);
        stack.push(root);
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n as usize];
            if !node.aabb.intersects(q) {
                continue;
            }
            match node.kind {
                NodeKind::Leaf(i) => out.push(i),
                NodeKind::Internal(a, b) => {
                    stack.push(b);
                    stack.push(a);
                }
            }
        }
    }

    /// Calls `f` for every stored box intersecting `q`; stops early when `f`
    /// returns `true` and reports whether it did.
    pub fn any(&self, q: &Aabb, mut f: impl FnMut(usize) -> bool) -> bool {
        let Some(root) = self.root else { return false };
        let mut stack: Vec<u32> = Vec::with_capacity(32);
        stack.push(root);
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n as usize];
            if !node.aabb.intersects(q) {
                continue;
            }
            match node.kind {
                NodeKind::Leaf(i) => {
                    if f(i) {
                        return true;
                    }
                }
                NodeKind::Internal(a, b) => {
                    stack.push(b);
                    stack.push(a);
                }
            }
        }
        false
    }
}

fn budget(n: usize) -> usize {
    ((BUDGET_C * (n as f64).powf(BUDGET_ALPHA)).ceil() as usize).max(1)
}

fn split_on_bit(prims: &[(u32, usize)], mut bit: i32) -> (&[(u32, usize)], &[(u32, usize)]) {
    while bit >= 0 {
        let mask = 1u32 << bit;
        let idx = prims.partition_point(|&(code, _)| code & mask == 0);
        // Codes are sorted and share all higher bits inside a partition, so
        // the bit splits them into a clean prefix/suffix.
        if idx > 0 && idx < prims.len() {
            return prims.split_at(idx);
        }
        bit -= 1;
    }
    prims.split_at(prims.len() / 2)
}

fn morton_code(p: Vec2, scene: &Aabb) -> u32 {
    let quantize = |v: f64, lo: f64, hi: f64| -> u32 {
        let span = hi - lo;
        if span <= 0.0 {
            return 0;
        }
        (((v - lo) / span) * 65535.0).clamp(0.0, 65535.0) as u32
    };
    let x = quantize(p.x, scene.min.x, scene.max.x);
    let y = quantize(p.y, scene.min.y, scene.max.y);
    spread_bits(x) | (spread_bits(y) << 1)
}

fn spread_bits(v: u32) -> u32 {
    let mut x = v & 0xFFFF;
    x = (x | (x << 8)) & 0x00FF_00FF;
    x = (x | (x << 4)) & 0x0F0F_0F0F;
    x = (x | (x << 2)) & 0x3333_3333;
    x = (x | (x << 1)) & 0x5555_5555;
    x
}
