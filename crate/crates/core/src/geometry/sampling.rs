use super::point::PointCloud;
use crate::error::{Error, Result};

/// Greedy farthest-first traversal over `n` items with a caller-supplied
/// squared distance.
///
/// Starts at `seed`, then repeatedly picks the item whose minimum distance to
/// the already selected set is largest. Ties go to the lowest index.
pub fn farthest_first(
    n: usize,
    k: usize,
    seed: usize,
    dist_sq: impl Fn(usize, usize) -> f64,
) -> Vec<usize> {
    debug_assert!(k <= n && seed < n);
    let mut selected = Vec::with_capacity(k);
    if k == 0 {
        return selected;
    }
    let mut min_d = vec![f64::INFINITY; n];
    let mut taken = vec![false; n];
    let mut current = seed;
    for _ in 0..k {
        selected.push(current);
        taken[current] = true;
        let mut next = usize::MAX;
        let mut next_d = f64::NEG_INFINITY;
        for i in 0..n {
            if taken[i] {
                continue;
            }
            let d = dist_sq(current, i);
            if d < min_d[i] {
                min_d[i] = d;
            }
            if min_d[i] > next_d {
                next_d = min_d[i];
                next = i;
            }
        }
        if next == usize::MAX {
            break;
        }
        current = next;
    }
    selected
}

/// Indices chosen by farthest point sampling.
pub fn fps_indices(cloud: &PointCloud, k: usize, seed_index: usize) -> Result<Vec<usize>> {
    cloud.require_nonempty("fps")?;
    if k == 0 || k > cloud.len() {
        return Err(Error::Size {
            context: "fps sample count",
            expected: cloud.len(),
            got: k,
        });
    }
    if seed_index >= cloud.len() {
        return Err(Error::Invalid(format!(
            "fps seed index {seed_index} out of range for {} points",
            cloud.len()
        )));
    }
    let pts = &cloud.points;
    Ok(farthest_first(pts.len(), k, seed_index, |a, b| {
        pts[a].dist_sq(pts[b])
    }))
}

/// Farthest point sampling of `k` points starting from `seed_index`.
pub fn fps(cloud: &PointCloud, k: usize, seed_index: usize) -> Result<PointCloud> {
    let idx = fps_indices(cloud, k, seed_index)?;
    Ok(cloud.select(&idx))
}
