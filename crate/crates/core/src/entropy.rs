//! Kozachenko–Leonenko differential entropy estimator.
//!
//! `H = psi(N) - psi(k) + ln V_d + (d / N) * sum_i ln rho_k(i)` where
//! `rho_k(i)` is the Euclidean distance from point `i` to its k-th nearest
//! neighbour (itself excluded) and `V_d` the volume of the unit d-ball.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 4;
/// Largest sample handled by the exhaustive search under [`NeighborSearch::Auto`].
pub const BRUTE_FORCE_LIMIT: usize = 20_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    /// Nats.
    pub value: f64,
    pub k_neighbors: usize,
    pub sample_count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NeighborSearch {
    Auto,
    BruteForce,
    KdTree,
}

pub fn ln_unit_ball_volume(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    h * std::f64::consts::PI.ln() - ln_gamma(h + 1.0)
}

pub fn knn_entropy(points: &[Vec<f64>], k: usize) -> Result<EntropyEstimate> {
    knn_entropy_with(points, k, NeighborSearch::Auto)
}

pub fn knn_entropy_with(points: &[Vec<f64>], k: usize, search: NeighborSearch) -> Result<EntropyEstimate> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    let n = points.len();
    if n < k + 1 {
        return Err(Error::NotEnoughSamples { needed: k + 1, got: n });
    }
    let d = points[0].len();
    if d == 0 {
        return Err(Error::InvalidArgument("points have zero dimension".into()));
    }
    if let Some(p) = points.iter().find(|p| p.len() != d) {
        return Err(Error::Dimension { expected: d, got: p.len() });
    }
    if points.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("entropy sample"));
    }
    let flat: Vec<f64> = points.iter().flatten().copied().collect();
    let kth = match search {
        NeighborSearch::BruteForce => kth_sq_brute(&flat, d, k),
        NeighborSearch::KdTree => kth_sq_kdtree(&flat, d, k),
        NeighborSearch::Auto if n <= BRUTE_FORCE_LIMIT => kth_sq_brute(&flat, d, k),
        NeighborSearch::Auto => kth_sq_kdtree(&flat, d, k),
    };
    let zeros = kth.iter().filter(|&&r2| r2 == 0.0).count();
    if zeros > 0 {
        return Err(Error::DegenerateSupport(zeros));
    }
    // ln rho = 0.5 ln rho^2
    let sum_ln_rho: f64 = kth.iter().map(|r2| 0.5 * r2.ln()).sum();
    let nf = n as f64;
    let value = digamma(nf) - digamma(k as f64) + ln_unit_ball_volume(d) + d as f64 / nf * sum_ln_rho;
    Ok(EntropyEstimate { value, k_neighbors: k, sample_count: n })
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Keeps the k smallest values seen so far, sorted ascending.
struct TopK {
    vals: Vec<f64>,
    k: usize,
}

impl TopK {
    fn new(k: usize) -> Self {
        TopK { vals: Vec::with_capacity(k + 1), k }
    }

    #[inline]
    fn worst(&self) -> f64 {
        if self.vals.len() < self.k {
            f64::INFINITY
        } else {
            self.vals[self.k - 1]
        }
    }

    #[inline]
    fn push(&mut self, v: f64) {
        if v >= self.worst() {
            return;
        }
        let pos = self.vals.partition_point(|&x| x <= v);
        self.vals.insert(pos, v);
        self.vals.truncate(self.k);
    }
}

fn kth_sq_brute(flat: &[f64], d: usize, k: usize) -> Vec<f64> {
    let n = flat.len() / d;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let p = &flat[i * d..(i + 1) * d];
            let mut top = TopK::new(k);
            for j in 0..n {
                if j != i {
                    top.push(sq_dist(p, &flat[j * d..(j + 1) * d]));
                }
            }
            top.worst()
        })
        .collect()
}

enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: Box<Node>, right: Box<Node> },
}

struct KdTree<'a> {
    flat: &'a [f64],
    d: usize,
    order: Vec<usize>,
    root: Node,
}

const LEAF_SIZE: usize = 16;

impl<'a> KdTree<'a> {
    fn build(flat: &'a [f64], d: usize) -> Self {
        let n = flat.len() / d;
        let mut order: Vec<usize> = (0..n).collect();
        let root = Self::build_node(flat, d, &mut order, 0);
        KdTree { flat, d, order, root }
    }

    fn build_node(flat: &[f64], d: usize, idx: &mut [usize], offset: usize) -> Node {
        if idx.len() <= LEAF_SIZE {
            return Node::Leaf { start: offset, end: offset + idx.len() };
        }
        let (mut dim, mut spread) = (0, -1.0);
        for c in 0..d {
            let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let x = flat[i * d + c];
                (lo.min(x), hi.max(x))
            });
            if hi - lo > spread {
                spread = hi - lo;
                dim = c;
            }
        }
        if spread <= 0.0 {
            return Node::Leaf { start: offset, end: offset + idx.len() };
        }
        let mid = idx.len() / 2;
        idx.select_nth_unstable_by(mid, |&a, &b| flat[a * d + dim].total_cmp(&flat[b * d + dim]));
        let value = flat[idx[mid] * d + dim];
        let (l, r) = idx.split_at_mut(mid);
        Node::Split {
            dim,
            value,
            left: Box::new(Self::build_node(flat, d, l, offset)),
            right: Box::new(Self::build_node(flat, d, r, offset + mid)),
        }
    }

    fn query(&self, node: &Node, i: usize, p: &[f64], top: &mut TopK) {
        match node {
            Node::Leaf { start, end } => {
                for &j in &self.order[*start..*end] {
                    if j != i {
                        top.push(sq_dist(p, &self.flat[j * self.d..(j + 1) * self.d]));
                    }
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = p[*dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.query(near, i, p, top);
                // Points equal to the split value can sit on either side, so
                // the far side is pruned only on a strict inequality.
                if diff * diff <= top.worst() {
                    self.query(far, i, p, top);
                }
            }
        }
    }
}

fn kth_sq_kdtree(flat: &[f64], d: usize, k: usize) -> Vec<f64> {
    let tree = KdTree::build(flat, d);
    let n = flat.len() / d;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut top = TopK::new(k);
            tree.query(&tree.root, i, &flat[i * d..(i + 1) * d], &mut top);
            top.worst()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use rand::Rng as _;

    fn uniform(n: usize, width: &[f64], seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rng_from(seed, &[]);
        (0..n).map(|_| width.iter().map(|w| w * rng.random::<f64>()).collect()).collect()
    }

    #[test]
    fn unit_ball_volumes() {
        assert!((ln_unit_ball_volume(1) - 2f64.ln()).abs() < 1e-12);
        assert!((ln_unit_ball_volume(2) - std::f64::consts::PI.ln()).abs() < 1e-12);
        assert!((ln_unit_ball_volume(3) - (4.0 / 3.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
    }

    #[test]
    fn uniform_square_has_zero_entropy() {
        let h = knn_entropy(&uniform(10_000, &[1.0, 1.0], 1), 4).unwrap();
        assert!(h.value.abs() < 0.05, "{h:?}");
        assert_eq!(h.sample_count, 10_000);
    }

    #[test]
    fn uniform_interval_entropy_is_ln_width() {
        let h = knn_entropy(&uniform(10_000, &[2.0], 2), 4).unwrap();
        assert!((h.value - 2f64.ln()).abs() < 0.05, "{h:?}");
    }

    #[test]
    fn identical_points_are_degenerate() {
        let pts = vec![vec![0.3, 0.3]; 20];
        assert!(matches!(knn_entropy(&pts, 4), Err(Error::DegenerateSupport(20))));
    }

    #[test]
    fn too_few_points() {
        let pts = uniform(4, &[1.0], 0);
        assert!(matches!(knn_entropy(&pts, 4), Err(Error::NotEnoughSamples { needed: 5, got: 4 })));
    }

    #[test]
    fn translation_invariance() {
        let pts = uniform(500, &[1.0, 1.0, 1.0], 3);
        let shifted: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().map(|x| x + 4.0).collect()).collect();
        let a = knn_entropy(&pts, 4).unwrap().value;
        let b = knn_entropy(&shifted, 4).unwrap().value;
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn scaling_adds_d_ln_alpha() {
        let pts = uniform(800, &[1.0, 3.0], 4);
        let alpha: f64 = 2.7;
        let scaled: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().map(|x| x * alpha).collect()).collect();
        let a = knn_entropy(&pts, 4).unwrap().value;
        let b = knn_entropy(&scaled, 4).unwrap().value;
        assert!((b - a - 2.0 * alpha.ln()).abs() < 1e-9);
    }

    #[test]
    fn larger_support_gives_larger_estimate() {
        let est = |w: f64, seed| knn_entropy(&uniform(10_000, &[w, w], seed), 4).unwrap().value;
        let small: Vec<f64> = (0..5).map(|s| est(1.0, s)).collect();
        let large: Vec<f64> = (0..5).map(|s| est(1.2, 100 + s)).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let var = |v: &[f64]| {
            let m = mean(v);
            v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
        };
        let se = ((var(&small) + var(&large)) / 5.0).sqrt();
        assert!(mean(&large) - mean(&small) > 3.0 * se, "{small:?} {large:?}");
    }

    #[test]
    fn kdtree_matches_brute_force_exactly() {
        for (d, seed) in [(1, 5), (2, 6), (3, 7), (5, 8)] {
            let mut pts = uniform(3_000, &vec![1.0; d], seed);
            // Ties and duplicate coordinates exercise the split boundary.
            for i in 0..100 {
                pts[i + 100][0] = pts[i][0];
            }
            let brute = knn_entropy_with(&pts, 4, NeighborSearch::BruteForce).unwrap();
            let tree = knn_entropy_with(&pts, 4, NeighborSearch::KdTree).unwrap();
            assert_eq!(brute, tree);
        }
    }

    #[test]
    fn large_samples_use_the_tree() {
        let pts = uniform(BRUTE_FORCE_LIMIT + 1, &[1.0, 1.0], 9);
        let auto = knn_entropy(&pts, 4).unwrap();
        assert_eq!(auto, knn_entropy_with(&pts, 4, NeighborSearch::BruteForce).unwrap());
    }
}
