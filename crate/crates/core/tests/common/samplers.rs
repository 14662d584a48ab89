use std::collections::BTreeSet;

use itsc_core::resample::{FeatureMatrix, Origin};
use rand::Rng;

/// Two overlapping Gaussian-ish blobs. `grid` snaps coordinates to integers
/// so distance ties occur.
pub fn blobs(r: &mut impl Rng, n_pos: usize, n_neg: usize, dim: usize, shift: f64, grid: bool) -> FeatureMatrix {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n_pos + n_neg {
        let label = u8::from(i < n_pos);
        let centre = if label == 1 { shift } else { 0.0 };
        for _ in 0..dim {
            let v = centre + r.random_range(-1.0..1.0) + r.random_range(-1.0..1.0);
            rows.push(if grid { (v * 2.0).round() } else { v });
        }
        labels.push(label);
    }
    FeatureMatrix::new(rows, dim, labels).unwrap()
}

fn dist(x: &FeatureMatrix, a: usize, b: usize) -> f64 {
    x.row(a).iter().zip(x.row(b)).map(|(p, q)| (p - q).powi(2)).sum::<f64>()
}

/// Whether `b` is the tie-broken nearest neighbor of `a`.
fn is_nearest(x: &FeatureMatrix, a: usize, b: usize) -> bool {
    let dab = dist(x, a, b);
    (0..x.len()).filter(|&c| c != a && c != b).all(|c| {
        let dac = dist(x, a, c);
        dab < dac || (dab == dac && b < c)
    })
}

pub fn tomek_oracle(x: &FeatureMatrix) -> BTreeSet<usize> {
    let mut removed = BTreeSet::new();
    for a in 0..x.len() {
        for b in a + 1..x.len() {
            if x.label(a) != x.label(b) && is_nearest(x, a, b) && is_nearest(x, b, a) {
                removed.insert(if x.label(a) == 0 { a } else { b });
            }
        }
    }
    removed
}

pub fn enn_oracle(x: &FeatureMatrix, k: usize) -> BTreeSet<usize> {
    (0..x.len())
        .filter(|&i| x.label(i) == 0)
        .filter(|&i| {
            let mut others: Vec<usize> = (0..x.len()).filter(|&j| j != i).collect();
            others.sort_by(|&p, &q| dist(x, i, p).partial_cmp(&dist(x, i, q)).unwrap().then(p.cmp(&q)));
            let agree = others[..k].iter().filter(|&&j| x.label(j) == x.label(i)).count();
            agree * 2 < k
        })
        .collect()
}

/// Indices of input rows that survived, read from origin markers.
pub fn kept_originals(out: &FeatureMatrix) -> BTreeSet<usize> {
    out.origin()
        .iter()
        .filter_map(|o| match o {
            Origin::Original(i) => Some(*i),
            Origin::Synthetic { .. } => None,
        })
        .collect()
}

pub fn removed_rows(input: &FeatureMatrix, out: &FeatureMatrix) -> BTreeSet<usize> {
    let kept = kept_originals(out);
    (0..input.len()).filter(|i| !kept.contains(i)).collect()
}

/// Every synthetic row equals `a + gap (b - a)` for its recorded parents,
/// with `gap` in `[0, 1]`. Returns the number of synthetic rows checked.
pub fn check_convexity(input: &FeatureMatrix, out: &FeatureMatrix) -> Result<usize, String> {
    let mut n = 0;
    for (i, o) in out.origin().iter().enumerate() {
        let Origin::Synthetic { parents: (a, b), gap } = *o else {
            continue;
        };
        if !(0.0..=1.0).contains(&gap) {
            return Err(format!("row {i}: gap {gap} outside [0, 1]"));
        }
        for ((v, p), q) in out.row(i).iter().zip(input.row(a)).zip(input.row(b)) {
            let lo = p.min(*q) - 1e-12;
            let hi = p.max(*q) + 1e-12;
            if *v < lo || *v > hi || (v - (p + gap * (q - p))).abs() > 1e-12 {
                return Err(format!("row {i} is not between parents {a} and {b}"));
            }
        }
        n += 1;
    }
    Ok(n)
}
