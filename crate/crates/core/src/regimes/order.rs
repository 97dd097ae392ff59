use crate::error::Result;
use crate::spd::{corr_distance, SymMatrix};

/// Leaf order of a single-linkage dendrogram built on `sqrt(2(1 − C))`.
///
/// Clusters are identified by their smallest member; among equally close
/// pairs the one with the lowest identifiers merges first, and the lower
/// cluster's leaves precede the higher one's.
pub fn hierarchical_order(c: &SymMatrix) -> Result<Vec<usize>> {
    let d = corr_distance(c)?;
    let n = d.dim();
    let mut dist: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| d.get(i, j)).collect()).collect();
    let mut leaves: Vec<Option<Vec<usize>>> = (0..n).map(|i| Some(vec![i])).collect();

    for _ in 1..n {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..n {
            if leaves[a].is_none() {
                continue;
            }
            for b in (a + 1)..n {
                if leaves[b].is_none() {
                    continue;
                }
                let v = dist[a][b];
                if best.is_none_or(|(bv, _, _)| v < bv) {
                    best = Some((v, a, b));
                }
            }
        }
        let (_, a, b) = best.expect("at least two clusters remain");
        let moved = leaves[b].take().unwrap();
        leaves[a].as_mut().unwrap().extend(moved);
        for k in 0..n {
            let m = dist[a][k].min(dist[b][k]);
            dist[a][k] = m;
            dist[k][a] = m;
        }
    }
    Ok(leaves.into_iter().flatten().next().unwrap_or_default())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block_corr(labels: &[usize], within: f64, across: f64) -> SymMatrix {
        let n = labels.len();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i == j {
                            1.0
                        } else if labels[i] == labels[j] {
                            within
                        } else {
                            across
                        }
                    })
                    .collect()
            })
            .collect();
        SymMatrix::from_rows(&rows).unwrap()
    }

    fn contiguous(order: &[usize], labels: &[usize]) -> bool {
        let seq: Vec<usize> = order.iter().map(|&i| labels[i]).collect();
        let mut seen = std::collections::HashSet::new();
        let mut prev = None;
        for l in seq {
            if prev != Some(l) {
                if !seen.insert(l) {
                    return false;
                }
                prev = Some(l);
            }
        }
        true
    }

    fn is_permutation(p: &[usize], n: usize) -> bool {
        let mut s = p.to_vec();
        s.sort_unstable();
        s == (0..n).collect::<Vec<_>>()
    }

    #[test]
    fn identity_gives_identity() {
        let order = hierarchical_order(&SymMatrix::identity(7)).unwrap();
        assert_eq!(order, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn two_blocks_are_contiguous() {
        let labels = [0, 0, 0, 1, 1, 1, 1];
        let order = hierarchical_order(&block_corr(&labels, 0.7, 0.1)).unwrap();
        assert!(is_permutation(&order, 7));
        assert!(contiguous(&order, &labels));
    }

    #[test]
    fn interleaved_blocks_recovered() {
        let labels = [0, 1, 2, 0, 1, 2, 0, 1, 2, 1];
        let order = hierarchical_order(&block_corr(&labels, 0.6, 0.05)).unwrap();
        assert!(is_permutation(&order, labels.len()));
        assert!(contiguous(&order, &labels));
    }
}
