//! Differential coding of the DC coefficients of consecutive blocks.

use crate::error::{JpegError, Result};

pub fn dpcm_encode(dcs: &[i32]) -> Result<Vec<i32>> {
    if dcs.is_empty() {
        return Err(JpegError::Empty);
    }
    let mut prev = 0;
    Ok(dcs
        .iter()
        .map(|&dc| {
            let d = dc - prev;
            prev = dc;
            d
        })
        .collect())
}

pub fn dpcm_decode(diffs: &[i32]) -> Result<Vec<i32>> {
    if diffs.is_empty() {
        return Err(JpegError::Empty);
    }
    Ok(diffs
        .iter()
        .scan(0, |acc, &d| {
            *acc += d;
            Some(*acc)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn differences() {
        assert_eq!(dpcm_encode(&[64, 66, 65]).unwrap(), vec![64, 2, -1]);
        assert_eq!(dpcm_encode(&[5, 5, 5]).unwrap(), vec![5, 0, 0]);
        assert_eq!(dpcm_encode(&[]), Err(JpegError::Empty));
        assert_eq!(dpcm_decode(&[]), Err(JpegError::Empty));
    }

    proptest! {
        #[test]
        fn prefix_sum_inverts(xs in proptest::collection::vec(-2048i32..2048, 1..200)) {
            let d = dpcm_encode(&xs).unwrap();
            // prefix-sum oracle
            let mut acc = 0;
            let sums: Vec<i32> = d.iter().map(|v| { acc += v; acc }).collect();
            prop_assert_eq!(&sums, &xs);
            prop_assert_eq!(dpcm_decode(&d).unwrap(), xs);
        }
    }
}
