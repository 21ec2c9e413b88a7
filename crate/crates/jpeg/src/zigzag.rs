use crate::error::{JpegError, Result};

/// `ZIGZAG[k]` is the natural (row-major) index of the k-th coefficient in
/// zig-zag order.
pub const ZIGZAG: [usize; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27,
    20, 13, 6, 7, 14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58,
    59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
];

/// `UNZIGZAG[n]` is the zig-zag position of natural index `n`.
pub const UNZIGZAG: [usize; 64] = {
    let mut t = [0; 64];
    let mut k = 0;
    while k < 64 {
        t[ZIGZAG[k]] = k;
        k += 1;
    }
    t
};

pub fn zigzag_scan<T: Copy>(block: &[T]) -> Result<[T; 64]> {
    if block.len() != 64 {
        return Err(JpegError::Length { expected: 64, actual: block.len() });
    }
    Ok(std::array::from_fn(|k| block[ZIGZAG[k]]))
}

pub fn inverse_zigzag<T: Copy>(seq: &[T]) -> Result<[T; 64]> {
    if seq.len() != 64 {
        return Err(JpegError::Length { expected: 64, actual: seq.len() });
    }
    Ok(std::array::from_fn(|n| seq[UNZIGZAG[n]]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Walks anti-diagonals, alternating direction, as in the JPEG figure.
    fn traversal_oracle() -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for s in 0..15usize {
            let cells: Vec<(usize, usize)> =
                (0..8).filter_map(|r| s.checked_sub(r).filter(|&c| c < 8).map(|c| (r, c))).collect();
            if s % 2 == 0 {
                out.extend(cells.into_iter().rev());
            } else {
                out.extend(cells);
            }
        }
        out
    }

    #[test]
    fn table_matches_traversal() {
        let walk = traversal_oracle();
        for (k, (r, c)) in walk.iter().enumerate() {
            assert_eq!(ZIGZAG[k], r * 8 + c);
        }
    }

    #[test]
    fn first_positions() {
        let pos: Vec<(usize, usize)> = ZIGZAG[..4].iter().map(|&n| (n / 8, n % 8)).collect();
        assert_eq!(pos, vec![(0, 0), (0, 1), (1, 0), (2, 0)]);
    }

    #[test]
    fn dc_only() {
        let mut b = [0i16; 64];
        b[0] = 42;
        let s = zigzag_scan(&b).unwrap();
        assert_eq!(s[0], 42);
        assert!(s[1..].iter().all(|&v| v == 0));
    }

    #[test]
    fn wrong_length() {
        assert!(zigzag_scan(&[0i16; 63]).is_err());
        assert!(inverse_zigzag(&[0i16; 65]).is_err());
    }

    proptest! {
        #[test]
        fn permutation_round_trip(b in proptest::collection::vec(any::<i16>(), 64)) {
            let s = zigzag_scan(&b).unwrap();
            prop_assert_eq!(inverse_zigzag(&s).unwrap().to_vec(), b);
        }
    }
}
