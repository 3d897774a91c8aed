/// Splits `[0, n_markers)` into contiguous `(start, count)` batches of
/// `batch_size`, the last possibly shorter.
pub fn plan_batches(n_markers: usize, batch_size: usize) -> Vec<(usize, usize)> {
    let batch_size = batch_size.max(1);
    (0..n_markers).step_by(batch_size).map(|start| (start, batch_size.min(n_markers - start))).collect()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn examples() {
        assert_eq!(plan_batches(10, 4), [(0, 4), (4, 4), (8, 2)]);
        assert_eq!(plan_batches(4, 10), [(0, 4)]);
        assert_eq!(plan_batches(1, 1), [(0, 1)]);
    }

    proptest! {
        #[test]
        fn covers_range_contiguously(n in 1usize..5000, b in 1usize..700) {
            let plan = plan_batches(n, b);
            let mut next = 0;
            for (i, &(start, count)) in plan.iter().enumerate() {
                prop_assert_eq!(start, next);
                if i + 1 < plan.len() {
                    prop_assert_eq!(count, b);
                } else {
                    prop_assert!(count >= 1 && count <= b);
                }
                next += count;
            }
            prop_assert_eq!(next, n);
        }
    }
}
