use alloc::vec;
use alloc::vec::Vec;

use super::CsrMatrix;
use crate::Point;

const LEAF: usize = 48;

/// Fill-reducing ordering by geometric nested dissection.
///
/// The vertex set is split at the median of its longer bounding-box axis;
/// vertices of the lower half that touch the upper half form the separator,
/// which is numbered after both halves. Returns `perm` with
/// `perm[new] = old`.
pub fn nested_dissection(pattern: &CsrMatrix, coords: &[Point]) -> Vec<usize> {
    let n = pattern.nrows();
    assert_eq!(coords.len(), n);
    let mut order = Vec::with_capacity(n);
    let mut stamp = vec![0u32; n];
    let mut counter = 0u32;
    let all: Vec<usize> = (0..n).collect();
    dissect(pattern, coords, all, &mut order, &mut stamp, &mut counter);
    debug_assert_eq!(order.len(), n);
    order
}

fn dissect(
    pattern: &CsrMatrix,
    coords: &[Point],
    mut set: Vec<usize>,
    order: &mut Vec<usize>,
    stamp: &mut [u32],
    counter: &mut u32,
) {
    if set.len() <= LEAF {
        order.extend_from_slice(&set);
        return;
    }
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for &v in &set {
        for d in 0..2 {
            lo[d] = lo[d].min(coords[v][d]);
            hi[d] = hi[d].max(coords[v][d]);
        }
    }
    let axis = if hi[0] - lo[0] >= hi[1] - lo[1] { 0 } else { 1 };
    let other = 1 - axis;
    let mid = set.len() / 2;
    set.select_nth_unstable_by(mid, |&a, &b| {
        coords[a][axis]
            .total_cmp(&coords[b][axis])
            .then(coords[a][other].total_cmp(&coords[b][other]))
            .then(a.cmp(&b))
    });
    let right = set.split_off(mid);
    let left = set;
    *counter += 1;
    let tag = *counter;
    for &v in &right {
        stamp[v] = tag;
    }
    let mut separator = Vec::new();
    let mut left_rest = Vec::with_capacity(left.len());
    for v in left {
        if pattern.row(v).any(|(u, _)| stamp[u] == tag) {
            separator.push(v);
        } else {
            left_rest.push(v);
        }
    }
    dissect(pattern, coords, left_rest, order, stamp, counter);
    dissect(pattern, coords, right, order, stamp, counter);
    order.extend_from_slice(&separator);
}
