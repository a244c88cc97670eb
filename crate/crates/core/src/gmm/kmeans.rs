//! k-means++ seeding followed by a fixed number of Lloyd refinement steps.

use rand::Rng;

use crate::numeric::compensated_sum;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn seed_centers<R: Rng>(data: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = data.len();
    let mut centers = vec![data[rng.gen_range(0..n)].clone()];
    let mut d2: Vec<f64> = data.iter().map(|x| sq_dist(x, &centers[0])).collect();
    while centers.len() < k {
        let total = compensated_sum(d2.iter().copied());
        let idx = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, w) in d2.iter().enumerate() {
                acc += w;
                if *w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave the target just past the running sum.
            pick.unwrap_or_else(|| d2.iter().rposition(|w| *w > 0.0).expect("total > 0"))
        } else {
            rng.gen_range(0..n)
        };
        centers.push(data[idx].clone());
        for (x, d) in data.iter().zip(d2.iter_mut()) {
            *d = d.min(sq_dist(x, centers.last().unwrap()));
        }
    }
    centers
}

/// Initial means: k-means++ seeds refined by `steps` Lloyd iterations.
/// A cluster that empties keeps its previous center.
pub(super) fn init_means<R: Rng>(data: &[Vec<f64>], k: usize, steps: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let dim = data[0].len();
    let mut centers = seed_centers(data, k, rng);
    for _ in 0..steps {
        let labels: Vec<usize> = data.iter().map(|x| nearest(x, &centers).0).collect();
        let mut changed = false;
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = data.iter().zip(&labels).filter(|(_, l)| **l == c).map(|(x, _)| x).collect();
            if members.is_empty() {
                continue;
            }
            let m = members.len() as f64;
            let updated: Vec<f64> = (0..dim)
                .map(|j| compensated_sum(members.iter().map(|x| x[j])) / m)
                .collect();
            if updated != *center {
                changed = true;
                *center = updated;
            }
        }
        if !changed {
            break;
        }
    }
    centers
}
