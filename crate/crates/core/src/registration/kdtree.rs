//! Exact nearest-neighbor search over a fixed 3D point set.

use super::RegistrationError;
use crate::geometry::Vec3;
use rayon::prelude::*;

const LEAF_SIZE: usize = 8;

/// Result of a nearest-neighbor query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    /// Index into the point list the index was built from.
    pub index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        dim: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Immutable k-d tree. Queries return the true minimum distance; among
/// equidistant points the lowest original index wins.
#[derive(Debug, Clone)]
pub struct NearestNeighborIndex {
    points: Vec<Vec3>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

/// `dx² + dy² + dz²` in a fixed evaluation order, so brute-force scans
/// written the same way agree bit for bit.
#[inline]
pub fn squared_distance(a: &Vec3, b: &Vec3) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}

impl NearestNeighborIndex {
    pub fn build(points: &[Vec3]) -> Result<Self, RegistrationError> {
        if points.is_empty() {
            return Err(RegistrationError::EmptyInput("nearest-neighbor index"));
        }
        if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(RegistrationError::NonFinite);
        }
        let mut index = Self {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1),
        };
        index.build_node(0, points.len());
        Ok(index)
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            let p = &self.points[i];
            for d in 0..3 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let dim = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap_or(0);
        if hi[dim] - lo[dim] == 0.0 {
            // All coincident: nothing to split on.
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][dim].total_cmp(&points[b][dim])
        });
        let value = self.points[self.order[mid]][dim];
        self.nodes.push(Node::Split {
            dim,
            value,
            left: 0,
            right: 0,
        });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        if let Node::Split {
            left: l, right: r, ..
        } = &mut self.nodes[id]
        {
            *l = left;
            *r = right;
        }
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn nearest(&self, query: &Vec3) -> Neighbor {
        let mut best = (f64::INFINITY, usize::MAX);
        self.search(0, query, &mut best);
        Neighbor {
            index: best.1,
            distance: best.0.sqrt(),
        }
    }

    /// Nearest neighbors for many queries, in query order.
    pub fn nearest_many(&self, queries: &[Vec3]) -> Vec<Neighbor> {
        queries.par_iter().map(|q| self.nearest(q)).collect()
    }

    fn search(&self, node: usize, q: &Vec3, best: &mut (f64, usize)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d2 = squared_distance(q, &self.points[i]);
                    if d2 < best.0 || (d2 == best.0 && i < best.1) {
                        *best = (d2, i);
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = q[dim] - value;
                let (near, far) = if diff < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, q, best);
                // `<=` keeps equidistant candidates on the far side reachable
                // for the lowest-index tie-break.
                if diff * diff <= best.0 {
                    self.search(far, q, best);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(points: &[Vec3], q: &Vec3) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for (i, p) in points.iter().enumerate() {
            let dx = q.x - p.x;
            let dy = q.y - p.y;
            let dz = q.z - p.z;
            let d2 = dx * dx + dy * dy + dz * dz;
            if d2 < best.1 {
                best = (i, d2);
            }
        }
        (best.0, best.1.sqrt())
    }

    fn cloud(rng: &mut impl Rng, n: usize, r: f64) -> Vec<Vec3> {
        (0..n)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-r..r),
                    rng.random_range(-r..r),
                    rng.random_range(-r..r),
                )
            })
            .collect()
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(
            NearestNeighborIndex::build(&[]),
            Err(RegistrationError::EmptyInput(_))
        ));
    }

    #[test]
    fn single_point() {
        let idx = NearestNeighborIndex::build(&[Vec3::new(1.0, 2.0, 3.0)]).unwrap();
        let n = idx.nearest(&Vec3::new(-5.0, 0.0, 9.0));
        assert_eq!(n.index, 0);
        assert!((n.distance - (36.0f64 + 4.0 + 36.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn indexed_point_has_zero_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let pts = cloud(&mut rng, 500, 10.0);
        let idx = NearestNeighborIndex::build(&pts).unwrap();
        for (i, p) in pts.iter().enumerate() {
            let n = idx.nearest(p);
            assert_eq!((n.index, n.distance), (i, 0.0));
        }
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let pts = cloud(&mut rng, 2000, 50.0);
        let idx = NearestNeighborIndex::build(&pts).unwrap();
        let queries = cloud(&mut rng, 500, 60.0);
        for (q, n) in queries.iter().zip(idx.nearest_many(&queries)) {
            assert_eq!((n.index, n.distance), brute(&pts, q));
        }
    }

    #[test]
    fn ties_go_to_lowest_index() {
        // Integer lattice with duplicates: many exact ties.
        let mut pts = Vec::new();
        for _copy in 0..3 {
            for x in 0..6 {
                for y in 0..6 {
                    for z in 0..6 {
                        pts.push(Vec3::new(x as f64, y as f64, z as f64));
                    }
                }
            }
        }
        let idx = NearestNeighborIndex::build(&pts).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..500 {
            let q = Vec3::new(
                rng.random_range(0..12) as f64 * 0.5,
                rng.random_range(0..12) as f64 * 0.5,
                rng.random_range(0..12) as f64 * 0.5,
            );
            let n = idx.nearest(&q);
            assert_eq!((n.index, n.distance), brute(&pts, &q));
        }
    }
}
