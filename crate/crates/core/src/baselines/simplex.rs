//! Simplex grids and projection used by the search-based baselines.

use crate::Scalar;

/// All points of the regular grid on the probability simplex over `cells`
/// coordinates with `resolution` values per edge (compositions of
/// `resolution - 1` integer parts). Lexicographic in the part vector.
pub fn simplex_grid(cells: usize, resolution: usize) -> Vec<Vec<Scalar>> {
    assert!(cells >= 1 && resolution >= 2);
    let total = resolution - 1;
    let mut out = Vec::new();
    let mut parts = vec![0usize; cells];
    fill(&mut out, &mut parts, 0, total, total);
    out
}

fn fill(out: &mut Vec<Vec<Scalar>>, parts: &mut Vec<usize>, cell: usize, remaining: usize, total: usize) {
    if cell == parts.len() - 1 {
        parts[cell] = remaining;
        out.push(parts.iter().map(|&k| k as Scalar / total as Scalar).collect());
        return;
    }
    for k in 0..=remaining {
        parts[cell] = k;
        fill(out, parts, cell + 1, remaining - k, total);
    }
}

/// Evenly spaced ratios on `[0, hi]` inclusive.
pub fn ratio_grid(hi: Scalar, resolution: usize) -> Vec<Scalar> {
    assert!(resolution >= 2);
    (0..resolution).map(|k| hi * k as Scalar / (resolution - 1) as Scalar).collect()
}

/// Euclidean projection onto the probability simplex (sorting-based).
pub fn project_simplex(point: &[Scalar]) -> Vec<Scalar> {
    let n = point.len();
    let mut sorted = point.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumulative = 0.0;
    let mut threshold = 0.0;
    for (k, &v) in sorted.iter().enumerate() {
        cumulative += v;
        let candidate = (cumulative - 1.0) / (k + 1) as Scalar;
        if k + 1 == n || sorted[k + 1] <= candidate {
            threshold = candidate;
            if k + 1 < n && sorted[k + 1] > candidate {
                continue;
            }
            break;
        }
    }
    point.iter().map(|&v| (v - threshold).max(0.0)).collect()
}
