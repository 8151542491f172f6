//! Exact nearest-neighbor queries over a fixed point cloud.

use crate::geometry::{Point3, PointCloud};

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: Box<Node>, right: Box<Node> },
}

/// A k-d tree over one cloud. Queries return the exact nearest member.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    points: Vec<Point3>,
    // Permutation of point indices; leaves own contiguous runs of it.
    order: Vec<usize>,
    root: Node,
}

impl NeighborIndex {
    pub fn new(cloud: &PointCloud) -> Self {
        Self::from_points(cloud.points().to_vec())
    }

    /// Builds over raw points. `points` must be nonempty for queries to be meaningful.
    pub fn from_points(points: Vec<Point3>) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let root = build(&points, &mut order, 0, points.len());
        Self { points, order, root }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    /// Index and distance of the nearest indexed point, or `None` on an empty index.
    pub fn nearest(&self, query: &Point3) -> Option<(usize, f64)> {
        self.search(query, usize::MAX)
    }

    /// Like [`nearest`](Self::nearest) but never returns the point at `skip`.
    pub fn nearest_excluding(&self, query: &Point3, skip: usize) -> Option<(usize, f64)> {
        self.search(query, skip)
    }

    /// Distance to the nearest indexed point; infinite on an empty index.
    pub fn nearest_distance(&self, query: &Point3) -> f64 {
        self.nearest(query).map_or(f64::INFINITY, |(_, d)| d)
    }

    fn search(&self, query: &Point3, skip: usize) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut best_sq = f64::INFINITY;
        self.visit(&self.root, query, skip, &mut best, &mut best_sq);
        // Report the same expression a linear scan would compute.
        best.map(|(i, _)| (i, (query - self.points[i]).norm()))
    }

    fn visit(&self, node: &Node, q: &Point3, skip: usize, best: &mut Option<(usize, f64)>, best_sq: &mut f64) {
        match node {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    if i == skip {
                        continue;
                    }
                    let d = (q - self.points[i]).norm_squared();
                    if d < *best_sq || (d == *best_sq && best.is_some_and(|(b, _)| i < b)) {
                        *best_sq = d;
                        *best = Some((i, d));
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[*axis] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.visit(near, q, skip, best, best_sq);
                if diff * diff <= *best_sq {
                    self.visit(far, q, skip, best, best_sq);
                }
            }
        }
    }
}

fn build(points: &[Point3], order: &mut [usize], start: usize, end: usize) -> Node {
    if end - start <= LEAF_SIZE {
        return Node::Leaf { start, end };
    }
    let slice = &mut order[start..end];
    let mut lo = points[slice[0]].coords;
    let mut hi = lo;
    for &i in slice.iter() {
        lo = lo.inf(&points[i].coords);
        hi = hi.sup(&points[i].coords);
    }
    let axis = (hi - lo).imax();
    if hi[axis] - lo[axis] == 0.0 {
        // All points coincide.
        return Node::Leaf { start, end };
    }
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
    let value = points[slice[mid]][axis];
    // Left holds coordinates <= value, right holds >= value; a query on the
    // plane descends left first and the pruning test covers the rest.
    let left = build(points, order, start, start + mid);
    let right = build(points, order, start + mid, end);
    Node::Split { axis, value, left: Box::new(left), right: Box::new(right) }
}
