use nalgebra::Matrix3;

use super::fastica::IcaResult;
use crate::stats::pearson;

/// What a result is aligned against.
#[derive(Debug, Clone, PartialEq)]
pub enum AlignReference {
    /// Reference loadings; columns are matched by absolute cosine similarity.
    Mixing(Matrix3<f64>),
    /// Reference series (planted sources, factors); components are matched
    /// by absolute Pearson correlation over the common prefix.
    Series(Vec<[f64; 3]>),
}

const PERMUTATIONS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

/// Reorders and flips components: new component `j` is
/// `signs[j] · old component perm[j]`.
pub(crate) fn apply_signed_permutation(r: IcaResult, perm: [usize; 3], signs: [f64; 3]) -> IcaResult {
    let mixing = Matrix3::from_fn(|i, j| signs[j] * r.mixing[(i, perm[j])]);
    let unmixing = Matrix3::from_fn(|i, j| signs[i] * r.unmixing[(perm[i], j)]);
    let rotation = Matrix3::from_fn(|i, j| signs[i] * r.rotation[(perm[i], j)]);
    let components = r
        .components
        .iter()
        .map(|s| std::array::from_fn(|j| signs[j] * s[perm[j]]))
        .collect();
    IcaResult {
        rotation,
        unmixing,
        mixing,
        components,
        ..r
    }
}

fn cosine(a: &Matrix3<f64>, i: usize, b: &Matrix3<f64>, j: usize) -> f64 {
    let ca = a.column(i);
    let cb = b.column(j);
    let d = ca.norm() * cb.norm();
    if d == 0.0 {
        0.0
    } else {
        ca.dot(&cb) / d
    }
}

fn similarity(r: &IcaResult, reference: &AlignReference) -> [[f64; 3]; 3] {
    match reference {
        AlignReference::Mixing(m) => std::array::from_fn(|i| std::array::from_fn(|j| cosine(&r.mixing, i, m, j))),
        AlignReference::Series(s) => {
            let n = s.len().min(r.components.len());
            let comp: [Vec<f64>; 3] = std::array::from_fn(|i| r.components[..n].iter().map(|v| v[i]).collect());
            let refs: [Vec<f64>; 3] = std::array::from_fn(|j| s[..n].iter().map(|v| v[j]).collect());
            std::array::from_fn(|i| std::array::from_fn(|j| pearson(&comp[i], &refs[j]).unwrap_or(0.0)))
        }
    }
}

/// Permutes and sign-flips components to maximize the summed absolute
/// similarity to `reference`, leaving every matched similarity non-negative.
/// Ties keep the earlier permutation, so an aligned result is a fixed point.
pub fn align_components(result: IcaResult, reference: &AlignReference) -> IcaResult {
    let c = similarity(&result, reference);
    let mut best = PERMUTATIONS[0];
    let mut best_score = f64::NEG_INFINITY;
    for p in PERMUTATIONS {
        let score: f64 = (0..3).map(|j| c[p[j]][j].abs()).sum();
        if score > best_score {
            best_score = score;
            best = p;
        }
    }
    let signs = std::array::from_fn(|j| if c[best[j]][j] < 0.0 { -1.0 } else { 1.0 });
    apply_signed_permutation(result, best, signs)
}

/// Deterministic ordering: components sorted by descending loading norm
/// (variance contribution, since components have unit variance), each signed
/// so its largest-magnitude loading is positive.
pub fn canonicalize(result: IcaResult) -> IcaResult {
    let norms: [f64; 3] = std::array::from_fn(|j| result.mixing.column(j).norm());
    let mut perm = [0usize, 1, 2];
    perm.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    let signs = std::array::from_fn(|j| {
        let col = result.mixing.column(perm[j]);
        let mut big = col[0];
        for k in 1..3 {
            if col[k].abs() > big.abs() {
                big = col[k];
            }
        }
        if big < 0.0 {
            -1.0
        } else {
            1.0
        }
    });
    apply_signed_permutation(result, perm, signs)
}
