//! Per-generation search diagnostics.

use crate::error::{Error, Result};

/// Lebesgue measure of the union of boxes `[p, reference]`.
pub fn hypervolume(front: &[Vec<f64>], reference: &[f64]) -> Result<f64> {
    for p in front {
        if p.len() != reference.len() {
            return Err(Error::arg("point and reference dimensions differ"));
        }
        if p.iter().zip(reference).any(|(a, r)| a > r) {
            return Err(Error::arg(format!(
                "point {p:?} lies beyond the reference point {reference:?}"
            )));
        }
    }
    let mut pts: Vec<Vec<f64>> = front.to_vec();
    Ok(hv_slices(&mut pts, reference))
}

/// Hypervolume of the points that dominate `reference`; the rest contribute
/// nothing and are dropped.
pub fn clipped_hypervolume(points: &[Vec<f64>], reference: &[f64]) -> f64 {
    let mut pts: Vec<Vec<f64>> = points
        .iter()
        .filter(|p| p.iter().zip(reference).all(|(a, r)| a <= r))
        .cloned()
        .collect();
    hv_slices(&mut pts, reference)
}

fn hv_slices(pts: &mut [Vec<f64>], reference: &[f64]) -> f64 {
    let d = reference.len();
    if pts.is_empty() || d == 0 {
        return 0.0;
    }
    if d == 1 {
        let best = pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        return reference[0] - best;
    }
    if d == 2 {
        pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
        let mut area = 0.0;
        let mut y_cap = reference[1];
        // Horizontal strips between successive improvements in y.
        for p in pts.iter() {
            if p[1] < y_cap {
                area += (reference[0] - p[0]) * (y_cap - p[1]);
                y_cap = p[1];
            }
        }
        return area;
    }
    // Sweep the last coordinate; each slab is the (d-1)-volume of the points
    // already passed.
    let last = d - 1;
    pts.sort_by(|a, b| a[last].total_cmp(&b[last]));
    let mut vol = 0.0;
    for i in 0..pts.len() {
        let upper = if i + 1 < pts.len() {
            pts[i + 1][last]
        } else {
            reference[last]
        };
        let depth = upper - pts[i][last];
        if depth <= 0.0 {
            continue;
        }
        let mut proj: Vec<Vec<f64>> = pts[..=i].iter().map(|p| p[..last].to_vec()).collect();
        vol += depth * hv_slices(&mut proj, &reference[..last]);
    }
    vol
}

fn scaled_distance(a: &[f64], b: &[f64], scale: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(scale)
        .map(|((x, y), s)| ((x - y) / s).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Mean pairwise distance between objective vectors divided componentwise by
/// `scale`. Zero for fewer than two points.
pub fn diversity_metric(objs: &[Vec<f64>], scale: &[f64]) -> f64 {
    let n = objs.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            total += scaled_distance(&objs[i], &objs[j], scale);
        }
    }
    total / (n * (n - 1) / 2) as f64
}

/// Generational distance: mean distance from each current front point to its
/// nearest neighbour on the previous front.
pub fn convergence_metric(front: &[Vec<f64>], previous: &[Vec<f64>], scale: &[f64]) -> f64 {
    if front.is_empty() || previous.is_empty() {
        return 0.0;
    }
    front
        .iter()
        .map(|p| {
            previous
                .iter()
                .map(|q| scaled_distance(p, q, scale))
                .fold(f64::INFINITY, f64::min)
        })
        .sum::<f64>()
        / front.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Monte-Carlo-free oracle: count unit cells of an integer grid covered
    /// by at least one box.
    fn grid_volume(points: &[Vec<f64>], reference: &[f64]) -> f64 {
        let r: Vec<usize> = reference.iter().map(|&v| v as usize).collect();
        let mut count = 0usize;
        for x in 0..r[0] {
            for y in 0..r[1] {
                for z in 0..r[2] {
                    let cell = [x as f64, y as f64, z as f64];
                    if points.iter().any(|p| p.iter().zip(&cell).all(|(a, c)| a <= c)) {
                        count += 1;
                    }
                }
            }
        }
        count as f64
    }

    #[test]
    fn examples() {
        assert_eq!(hypervolume(&[vec![1.0, 2.0], vec![2.0, 1.0]], &[3.0, 3.0]).unwrap(), 3.0);
        assert_eq!(hypervolume(&[vec![1.0, 1.0, 1.0]], &[2.0, 2.0, 2.0]).unwrap(), 1.0);
        let with_dominated = [vec![1.0, 2.0], vec![2.0, 1.0], vec![2.5, 2.5]];
        assert_eq!(hypervolume(&with_dominated, &[3.0, 3.0]).unwrap(), 3.0);
        assert!(hypervolume(&[vec![4.0, 1.0]], &[3.0, 3.0]).is_err());
        assert_eq!(hypervolume(&[], &[1.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn diversity_and_convergence_examples() {
        let one = [1.0, 1.0, 1.0];
        assert_eq!(diversity_metric(&vec![vec![1.0, 2.0, 3.0]; 4], &one), 0.0);
        assert_eq!(diversity_metric(&[vec![0.0, 0.0, 0.0], vec![3.0, 4.0, 0.0]], &one), 5.0);
        assert_eq!(diversity_metric(&[vec![0.0, 0.0, 0.0], vec![6.0, 8.0, 0.0]], &[2.0, 2.0, 1.0]), 5.0);
        assert_eq!(diversity_metric(&[vec![1.0, 1.0, 1.0]], &one), 0.0);
        let f = vec![vec![1.0, 2.0, 0.0], vec![2.0, 1.0, 0.0]];
        assert_eq!(convergence_metric(&f, &f, &one), 0.0);
        assert_eq!(convergence_metric(&[vec![0.0, 0.0, 0.0]], &[vec![0.0, 3.0, 4.0]], &one), 5.0);
    }

    proptest! {
        #[test]
        fn hv_matches_grid_count(pts in prop::collection::vec((0u8..6, 0u8..6, 0u8..6), 1..12)) {
            let points: Vec<Vec<f64>> = pts.iter().map(|&(a, b, c)| vec![a as f64, b as f64, c as f64]).collect();
            let reference = [6.0, 6.0, 6.0];
            prop_assert_eq!(hypervolume(&points, &reference).unwrap(), grid_volume(&points, &reference));
        }

        #[test]
        fn hv_is_monotone_under_insertion(
            pts in prop::collection::vec((0.0f64..5.0, 0.0f64..5.0, 0.0f64..5.0), 1..15),
            extra in (0.0f64..5.0, 0.0f64..5.0, 0.0f64..5.0),
        ) {
            let mut points: Vec<Vec<f64>> = pts.iter().map(|&(a, b, c)| vec![a, b, c]).collect();
            let r = [5.0, 5.0, 5.0];
            let before = hypervolume(&points, &r).unwrap();
            points.push(vec![extra.0, extra.1, extra.2]);
            prop_assert!(hypervolume(&points, &r).unwrap() >= before - 1e-9);
        }
    }
}
