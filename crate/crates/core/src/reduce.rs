//! Fixed-shape pairwise reduction.
//!
//! The split points depend only on the number of leaves, so the floating-point
//! result is identical for any rayon pool size.

/// Reduces `leaf(0) .. leaf(count - 1)` with a balanced binary tree.
/// `count` must be at least 1.
pub fn tree_reduce<T, L, C>(count: usize, leaf: &L, combine: &C) -> T
where
    T: Send,
    L: Fn(usize) -> T + Sync,
    C: Fn(T, T) -> T + Sync,
{
    assert!(count > 0, "tree_reduce needs at least one leaf");
    reduce_range(0, count, leaf, combine)
}

fn reduce_range<T, L, C>(lo: usize, hi: usize, leaf: &L, combine: &C) -> T
where
    T: Send,
    L: Fn(usize) -> T + Sync,
    C: Fn(T, T) -> T + Sync,
{
    if hi - lo == 1 {
        return leaf(lo);
    }
    let mid = lo + (hi - lo) / 2;
    let (left, right) = rayon::join(
        || reduce_range(lo, mid, leaf, combine),
        || reduce_range(mid, hi, leaf, combine),
    );
    combine(left, right)
}

/// Splits `0..len` into consecutive chunks of `chunk` items (last one shorter).
pub fn chunk_bounds(len: usize, chunk: usize) -> Vec<(usize, usize)> {
    (0..len.div_ceil(chunk))
        .map(|c| (c * chunk, ((c + 1) * chunk).min(len)))
        .collect()
}
