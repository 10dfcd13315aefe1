//! Lloyd's k-means with k-means++ seeding, used only to initialise the chain.

use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub iterations: usize,
}

impl KMeans {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centroids.len()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    /// Within-cluster sum of squared distances to the centroids.
    pub fn inertia(&self, points: &[Vec<f64>]) -> f64 {
        points
            .iter()
            .zip(&self.assignments)
            .map(|(p, &a)| sq_dist(p, &self.centroids[a]))
            .sum()
    }
}

const MAX_ITERATIONS: usize = 300;

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_seeds<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())].clone());
    let mut dist: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, d) in dist.iter().enumerate() {
                if u < *d {
                    chosen = i;
                    break;
                }
                u -= d;
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[pick].clone());
        for (i, p) in points.iter().enumerate() {
            dist[i] = dist[i].min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

fn recompute_centroids(points: &[Vec<f64>], assignments: &[usize], k: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut sizes = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignments) {
        sizes[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(p) {
            *s += x;
        }
    }
    for (s, &n) in sums.iter_mut().zip(&sizes) {
        if n > 0 {
            for v in s.iter_mut() {
                *v /= n as f64;
            }
        }
    }
    (sums, sizes)
}

/// Moves the point farthest from its centroid into each empty cluster,
/// taking only from clusters with more than one member.
fn reseed_empty(points: &[Vec<f64>], assignments: &mut [usize], centroids: &mut [Vec<f64>], sizes: &mut [usize]) -> bool {
    let mut changed = false;
    for c in 0..centroids.len() {
        if sizes[c] > 0 {
            continue;
        }
        let donor = points
            .iter()
            .enumerate()
            .filter(|(i, _)| sizes[assignments[*i]] > 1)
            .map(|(i, p)| (i, sq_dist(p, &centroids[assignments[i]])))
            .fold(None::<(usize, f64)>, |best, cur| match best {
                Some(b) if b.1 >= cur.1 => Some(b),
                _ => Some(cur),
            });
        if let Some((i, _)) = donor {
            sizes[assignments[i]] -= 1;
            assignments[i] = c;
            sizes[c] = 1;
            centroids[c] = points[i].clone();
            changed = true;
        }
    }
    changed
}

/// Clusters `points` into `k` groups. Clusters can remain empty only when
/// there are fewer points than clusters.
pub fn kmeans<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> KMeans {
    assert!(k >= 1, "k must be positive");
    assert!(!points.is_empty(), "no points to cluster");
    let dim = points[0].len();
    let mut centroids = plus_plus_seeds(points, k, rng);
    let mut assignments: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let (mut next, mut sizes) = recompute_centroids(points, &assignments, k, dim);
        for c in 0..k {
            if sizes[c] == 0 {
                next[c] = centroids[c].clone();
            }
        }
        centroids = next;
        let reseeded = reseed_empty(points, &mut assignments, &mut centroids, &mut sizes);
        if reseeded {
            let (fresh, _) = recompute_centroids(points, &assignments, k, dim);
            for c in 0..k {
                if sizes[c] > 0 {
                    centroids[c] = fresh[c].clone();
                }
            }
        }
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let (best, best_d) = nearest(p, &centroids);
            // keep ties with the current cluster so equal points do not oscillate
            let current_d = sq_dist(p, &centroids[assignments[i]]);
            if best != assignments[i] && best_d < current_d {
                assignments[i] = best;
                changed = true;
            }
        }
        if (!changed && !reseeded) || iterations >= MAX_ITERATIONS {
            break;
        }
    }
    let (mut final_centroids, sizes) = recompute_centroids(points, &assignments, k, dim);
    for c in 0..k {
        if sizes[c] == 0 {
            final_centroids[c] = centroids[c].clone();
        }
    }
    KMeans {
        assignments,
        centroids: final_centroids,
        iterations,
    }
}
