use std::collections::BinaryHeap;

/// Leaf capacity used by [`KdTree::build`] unless overridden.
pub const DEFAULT_LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
struct Node {
    start: usize,
    end: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    children: Option<(usize, usize)>,
}

/// Static kd-tree over `N × d` points for Chebyshev (L∞) queries.
///
/// Nodes split at the median of their widest-spread axis; each node keeps its
/// bounding box so whole subtrees can be pruned or counted at once.
#[derive(Debug, Clone)]
pub struct KdTree {
    dims: usize,
    points: Vec<f64>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

pub fn chebyshev(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[derive(PartialEq)]
struct Candidate(f64, usize);

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl KdTree {
    pub fn build(points: &[f64], dims: usize, leaf_size: usize) -> Self {
        assert!(dims > 0 && points.len() % dims == 0, "points must be rows of width {dims}");
        let n = points.len() / dims;
        let mut tree = Self { dims, points: points.to_vec(), order: (0..n).collect(), nodes: Vec::new() };
        if n > 0 {
            tree.build_node(0, n, leaf_size.max(1));
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dims..(i + 1) * self.dims]
    }

    fn build_node(&mut self, start: usize, end: usize, leaf_size: usize) -> usize {
        let d = self.dims;
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for &i in &self.order[start..end] {
            for a in 0..d {
                let v = self.points[i * d + a];
                lo[a] = lo[a].min(v);
                hi[a] = hi[a].max(v);
            }
        }
        let id = self.nodes.len();
        self.nodes.push(Node { start, end, lo, hi, children: None });
        if end - start <= leaf_size {
            return id;
        }
        let node = &self.nodes[id];
        let axis = (0..d)
            .max_by(|&a, &b| (node.hi[a] - node.lo[a]).total_cmp(&(node.hi[b] - node.lo[b])))
            .unwrap_or(0);
        if node.hi[axis] == node.lo[axis] {
            // All points coincide.
            return id;
        }
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&i, &j| {
            points[i * d + axis].total_cmp(&points[j * d + axis])
        });
        let left = self.build_node(start, mid, leaf_size);
        let right = self.build_node(mid, end, leaf_size);
        self.nodes[id].children = Some((left, right));
        id
    }

    fn min_dist(node: &Node, q: &[f64]) -> f64 {
        q.iter()
            .zip(node.lo.iter().zip(&node.hi))
            .map(|(&v, (&lo, &hi))| (lo - v).max(v - hi).max(0.0))
            .fold(0.0, f64::max)
    }

    fn max_dist(node: &Node, q: &[f64]) -> f64 {
        q.iter()
            .zip(node.lo.iter().zip(&node.hi))
            .map(|(&v, (&lo, &hi))| (v - lo).abs().max((hi - v).abs()))
            .fold(0.0, f64::max)
    }

    /// Chebyshev distance from point `i` to its `k`-th nearest other point.
    pub fn kth_neighbor_distance(&self, i: usize, k: usize) -> f64 {
        assert!(k >= 1 && k < self.len(), "need 1 <= k < N");
        let q = self.point(i).to_vec();
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if heap.len() == k && Self::min_dist(node, &q) > heap.peek().map_or(f64::INFINITY, |c| c.0) {
                continue;
            }
            match node.children {
                None => {
                    for &j in &self.order[node.start..node.end] {
                        if j == i {
                            continue;
                        }
                        let dist = chebyshev(&q, self.point(j));
                        if heap.len() < k {
                            heap.push(Candidate(dist, j));
                        } else if dist < heap.peek().map_or(f64::INFINITY, |c| c.0) {
                            heap.pop();
                            heap.push(Candidate(dist, j));
                        }
                    }
                }
                Some((l, r)) => {
                    let (dl, dr) = (Self::min_dist(&self.nodes[l], &q), Self::min_dist(&self.nodes[r], &q));
                    // Nearer child popped first.
                    if dl <= dr {
                        stack.push(r);
                        stack.push(l);
                    } else {
                        stack.push(l);
                        stack.push(r);
                    }
                }
            }
        }
        heap.peek().map_or(f64::INFINITY, |c| c.0)
    }

    fn count(&self, q: &[f64], radius: f64, inclusive: bool) -> usize {
        let inside = |d: f64| if inclusive { d <= radius } else { d < radius };
        let mut total = 0;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if !inside(Self::min_dist(node, q)) {
                continue;
            }
            if inside(Self::max_dist(node, q)) {
                total += node.end - node.start;
                continue;
            }
            match node.children {
                None => {
                    total += self.order[node.start..node.end]
                        .iter()
                        .filter(|&&j| inside(chebyshev(q, self.point(j))))
                        .count();
                }
                Some((l, r)) => {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        total
    }

    /// Points (the query itself included, if stored) at Chebyshev distance
    /// strictly less than `radius`.
    pub fn count_strictly_within(&self, q: &[f64], radius: f64) -> usize {
        if self.is_empty() {
            return 0;
        }
        self.count(q, radius, false)
    }

    /// Points at Chebyshev distance at most `radius`.
    pub fn count_within_inclusive(&self, q: &[f64], radius: f64) -> usize {
        if self.is_empty() {
            return 0;
        }
        self.count(q, radius, true)
    }

    /// Every stored index, in traversal order.
    pub fn traverse(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len());
        let mut stack = if self.nodes.is_empty() { vec![] } else { vec![0usize] };
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            match node.children {
                None => out.extend_from_slice(&self.order[node.start..node.end]),
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
            }
        }
        out
    }
}
