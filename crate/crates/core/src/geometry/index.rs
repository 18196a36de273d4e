use super::point::Point3;

const LEAF_SIZE: usize = 8;

#[derive(Clone, Debug)]
enum Node {
    Leaf {
        start: u32,
        end: u32,
    },
    Split {
        left: u32,
        right: u32,
    },
}

/// Immutable k-d tree over a fixed point set.
///
/// `nearest` returns exactly what a brute-force scan would: the smallest
/// squared distance, ties broken by the lowest point index.
#[derive(Clone, Debug)]
pub struct SpatialIndex {
    points: Vec<Point3>,
    order: Vec<u32>,
    nodes: Vec<Node>,
    /// Axis-aligned bounds of each node's points.
    boxes: Vec<([f64; 3], [f64; 3])>,
}

impl SpatialIndex {
    pub fn new(points: &[Point3]) -> Self {
        let mut index = SpatialIndex {
            points: points.to_vec(),
            order: (0..points.len() as u32).collect(),
            nodes: Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1),
            boxes: Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1),
        };
        if !points.is_empty() {
            index.build(0, points.len());
        }
        index
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

    fn build(&mut self, start: usize, end: usize) -> u32 {
        let id = self.nodes.len() as u32;
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            let p = self.points[i as usize];
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        self.boxes.push((lo, hi));
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf {
                start: start as u32,
                end: end as u32,
            });
            return id;
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap_or(0);
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&i, &j| {
            points[i as usize][axis]
                .total_cmp(&points[j as usize][axis])
                .then(i.cmp(&j))
        });
        self.nodes.push(Node::Split { left: 0, right: 0 });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        if let Node::Split {
            left: l, right: r, ..
        } = &mut self.nodes[id as usize]
        {
            *l = left;
            *r = right;
        }
        id
    }

    fn box_dist_sq(&self, node: u32, q: Point3) -> f64 {
        let (lo, hi) = &self.boxes[node as usize];
        let mut d = 0.0;
        for a in 0..3 {
            let e = if q[a] < lo[a] {
                lo[a] - q[a]
            } else if q[a] > hi[a] {
                q[a] - hi[a]
            } else {
                0.0
            };
            d += e * e;
        }
        d
    }

    /// Index and squared distance of the nearest point to `q`.
    ///
    /// Panics on an empty index.
    pub fn nearest(&self, q: Point3) -> (usize, f64) {
        assert!(!self.points.is_empty(), "nearest() on empty SpatialIndex");
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(0, q, &mut best);
        best
    }

    fn search(&self, node: u32, q: Point3, best: &mut (usize, f64)) {
        match self.nodes[node as usize] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start as usize..end as usize] {
                    let d = self.points[i as usize].dist_sq(q);
                    let i = i as usize;
                    if d < best.1 || (d == best.1 && i < best.0) {
                        *best = (i, d);
                    }
                }
            }
            Node::Split { left, right } => {
                let dl = self.box_dist_sq(left, q);
                let dr = self.box_dist_sq(right, q);
                let ((first, df), (second, ds)) = if dl <= dr {
                    ((left, dl), (right, dr))
                } else {
                    ((right, dr), (left, dl))
                };
                if df <= best.1 {
                    self.search(first, q, best);
                }
                if ds <= best.1 {
                    self.search(second, q, best);
                }
            }
        }
    }
}
