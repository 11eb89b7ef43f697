//! Vecchia approximation of the Gaussian log-likelihood.
//!
//! Observations are put in maxmin order and each one is conditioned on its
//! `m` nearest predecessors in the scaled space-time metric:
//!
//! ```text
//! log p(y) ≈ Σᵢ log p(y_(i) | y_(neighbors of i))
//! ```
//!
//! With `m ≥ n − 1` every conditioning set holds all predecessors and the
//! factorization is exact. The plan (ordering plus neighbor sets) depends on
//! the ranges only through the metric used to build it; it is built once and
//! held fixed while the covariance parameters are optimized.

mod likelihood;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ObservationSet;
use crate::geo::{check_ranges, squared_norm4};
use crate::{Error, Result};

pub use likelihood::{profiled_gls, vecchia_loglik, GlsResult, VecchiaLikelihood, Whitened};

pub const DEFAULT_NEIGHBORS: usize = 30;

/// Ordering and conditioning sets for the Vecchia factorization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborPlan {
    /// `order[k]` is the index in the data set of the k-th ordered point.
    pub order: Vec<usize>,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    /// Requested neighbor count.
    pub m: usize,
    /// `(spatial_range, temporal_range)` defining the metric.
    pub scaling: (f64, f64),
}

impl NeighborPlan {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Conditioning set of ordered position `k`, as ordered positions `< k`,
    /// nearest first.
    pub fn neighbors(&self, k: usize) -> &[usize] {
        &self.neighbors[self.offsets[k]..self.offsets[k + 1]]
    }
}

fn scaled_points(set: &ObservationSet, scaling: (f64, f64)) -> Result<Vec<[f64; 4]>> {
    check_ranges(scaling.0, scaling.1)?;
    Ok(set.iter().map(|o| o.point().scaled_coords(scaling.0, scaling.1)).collect())
}

/// Maxmin ordering: start from the point nearest the centroid of the scaled
/// coordinates, then repeatedly take the point whose distance to the closest
/// already-selected point is largest. Ties go to the lowest index.
pub fn maxmin_order(set: &ObservationSet, scaling: (f64, f64)) -> Result<Vec<usize>> {
    let pts = scaled_points(set, scaling)?;
    Ok(maxmin_order_points(&pts))
}

pub(crate) fn maxmin_order_points(pts: &[[f64; 4]]) -> Vec<usize> {
    let n = pts.len();
    if n == 0 {
        return Vec::new();
    }
    let mut centroid = [0.0; 4];
    for p in pts {
        for (c, v) in centroid.iter_mut().zip(p) {
            *c += v;
        }
    }
    centroid.iter_mut().for_each(|c| *c /= n as f64);

    let first = argmin_by(pts.iter().map(|p| squared_norm4(p, &centroid)));
    let mut order = Vec::with_capacity(n);
    order.push(first);
    let mut selected = vec![false; n];
    selected[first] = true;
    let mut min_d2: Vec<f64> = pts.iter().map(|p| squared_norm4(p, &pts[first])).collect();

    for _ in 1..n {
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for (j, &d) in min_d2.iter().enumerate() {
            if !selected[j] && d > best_d {
                best = j;
                best_d = d;
            }
        }
        selected[best] = true;
        order.push(best);
        let pb = pts[best];
        min_d2
            .par_iter_mut()
            .zip(pts.par_iter())
            .with_min_len(4096)
            .for_each(|(d, p)| {
                let e = squared_norm4(p, &pb);
                if e < *d {
                    *d = e;
                }
            });
    }
    order
}

fn argmin_by(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::INFINITY;
    for (i, v) in values.enumerate() {
        if v < best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    pos: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.pos.cmp(&other.pos))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Exact `m` nearest previously-ordered points for every ordered position,
/// ties broken by lower ordered position.
pub fn nearest_neighbors(set: &ObservationSet, order: &[usize], m: usize, scaling: (f64, f64)) -> Result<NeighborPlan> {
    if m == 0 {
        return Err(Error::InvalidArgument("neighbor count must be at least 1".into()));
    }
    let n = set.len();
    let mut seen = vec![false; n];
    if order.len() != n || order.iter().any(|&i| i >= n || std::mem::replace(&mut seen[i], true)) {
        return Err(Error::InvalidArgument("order is not a permutation of the data set".into()));
    }
    let pts = scaled_points(set, scaling)?;
    let ordered: Vec<[f64; 4]> = order.iter().map(|&i| pts[i]).collect();

    let lists: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .with_min_len(64)
        .map(|k| nearest_predecessors(&ordered, k, m))
        .collect();

    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    let mut neighbors = Vec::with_capacity(lists.iter().map(Vec::len).sum());
    for l in lists {
        neighbors.extend_from_slice(&l);
        offsets.push(neighbors.len());
    }
    Ok(NeighborPlan { order: order.to_vec(), offsets, neighbors, m, scaling })
}

fn nearest_predecessors(ordered: &[[f64; 4]], k: usize, m: usize) -> Vec<usize> {
    if k <= m {
        let mut all: Vec<Candidate> =
            (0..k).map(|j| Candidate { d2: squared_norm4(&ordered[j], &ordered[k]), pos: j }).collect();
        all.sort_unstable();
        return all.into_iter().map(|c| c.pos).collect();
    }
    let p = ordered[k];
    let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(m + 1);
    for (j, q) in ordered[..k].iter().enumerate() {
        let c = Candidate { d2: squared_norm4(q, &p), pos: j };
        if heap.len() < m {
            heap.push(c);
        } else if c < *heap.peek().unwrap() {
            heap.pop();
            heap.push(c);
        }
    }
    heap.into_sorted_vec().into_iter().map(|c| c.pos).collect()
}

/// Maxmin ordering followed by neighbor selection, in the metric defined by
/// `scaling`.
pub fn build_plan(set: &ObservationSet, m: usize, scaling: (f64, f64)) -> Result<NeighborPlan> {
    let order = maxmin_order(set, scaling)?;
    nearest_neighbors(set, &order, m, scaling)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Observation, Sensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(n: usize, seed: u64) -> ObservationSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                Observation::new(
                    rng.random_range(0.0..86_400.0),
                    rng.random_range(-20.0..20.0),
                    rng.random_range(-15.0..15.0),
                    5.0,
                    Sensor::Reference,
                    "r",
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn single_point() {
        let set = random_set(1, 0);
        assert_eq!(maxmin_order(&set, (100.0, 3600.0)).unwrap(), vec![0]);
        let plan = build_plan(&set, 5, (100.0, 3600.0)).unwrap();
        assert!(plan.neighbors(0).is_empty());
    }

    #[test]
    fn collinear_points_middle_first() {
        // Scaled positions 0, 1, 2 along the time axis.
        let set: ObservationSet = [0.0, 1.0, 2.0]
            .iter()
            .map(|&t| Observation::new(t * 3600.0, 0.0, 0.0, 5.0, Sensor::Reference, "r").unwrap())
            .collect();
        assert_eq!(maxmin_order(&set, (100.0, 3600.0)).unwrap(), vec![1, 0, 2]);
        let reversed: ObservationSet = set.iter().rev().cloned().collect();
        assert_eq!(maxmin_order(&reversed, (100.0, 3600.0)).unwrap(), vec![1, 0, 2]);
    }

    #[test]
    fn order_is_a_permutation() {
        let set = random_set(1000, 3);
        let mut order = maxmin_order(&set, (300.0, 7200.0)).unwrap();
        order.sort_unstable();
        assert_eq!(order, (0..1000).collect::<Vec<_>>());
    }

    /// Brute force: every later point is at least as far from the selected
    /// prefix as the point actually chosen.
    #[test]
    fn maxmin_rule_holds() {
        let set = random_set(150, 9);
        let pts = scaled_points(&set, (300.0, 7200.0)).unwrap();
        let order = maxmin_order_points(&pts);
        for k in 1..order.len() {
            let dist_to_prefix =
                |j: usize| order[..k].iter().map(|&s| squared_norm4(&pts[s], &pts[j])).fold(f64::INFINITY, f64::min);
            let chosen = dist_to_prefix(order[k]);
            for &j in &order[k + 1..] {
                assert!(dist_to_prefix(j) <= chosen);
            }
        }
    }

    #[test]
    fn neighbors_match_brute_force() {
        let set = random_set(200, 11);
        let scaling = (250.0, 5000.0);
        let m = 10;
        let plan = build_plan(&set, m, scaling).unwrap();
        let pts = scaled_points(&set, scaling).unwrap();
        for k in 0..plan.len() {
            let nb = plan.neighbors(k);
            assert_eq!(nb.len(), m.min(k));
            let mut all: Vec<(f64, usize)> =
                (0..k).map(|j| (squared_norm4(&pts[plan.order[j]], &pts[plan.order[k]]), j)).collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let want: Vec<usize> = all.iter().take(m).map(|x| x.1).collect();
            assert_eq!(nb, want.as_slice(), "position {k}");
        }
        assert!(plan.neighbors(0).is_empty());
        assert_eq!(plan.neighbors(5), {
            let mut v: Vec<(f64, usize)> =
                (0..5).map(|j| (squared_norm4(&pts[plan.order[j]], &pts[plan.order[5]]), j)).collect();
            v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            v.into_iter().map(|x| x.1).collect::<Vec<_>>()
        });
    }

    #[test]
    fn rejects_bad_inputs() {
        let set = random_set(5, 1);
        assert!(nearest_neighbors(&set, &[0, 1, 2, 3, 4], 0, (1.0, 1.0)).is_err());
        assert!(nearest_neighbors(&set, &[0, 1, 2, 3, 3], 2, (1.0, 1.0)).is_err());
        assert!(maxmin_order(&set, (0.0, 1.0)).is_err());
    }
}
