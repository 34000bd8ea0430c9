//! Bitstring helpers. Qubit `j` of an `n`-qubit string is bit `n - 1 - j`.

use crate::error::{Error, Result};

/// Largest register width representable in a `u64` string.
pub const MAX_QUBITS: usize = 63;

#[inline]
pub fn qubit_bit(n: usize, j: usize) -> u64 {
    debug_assert!(j < n);
    1u64 << (n - 1 - j)
}

#[inline]
pub fn get(x: u64, n: usize, j: usize) -> bool {
    x & qubit_bit(n, j) != 0
}

#[inline]
pub fn parity(x: u64) -> bool {
    x.count_ones() & 1 == 1
}

/// `(-1)^{s·x}` as a float.
#[inline]
pub fn sign(s: u64, x: u64) -> f64 {
    if parity(s & x) {
        -1.0
    } else {
        1.0
    }
}

pub fn mask_of(n: usize, qubits: &[usize]) -> u64 {
    qubits.iter().fold(0, |m, &j| m | qubit_bit(n, j))
}

/// Qubit indices set in `mask`, ascending.
pub fn qubits_of(mask: u64, n: usize) -> Vec<usize> {
    (0..n).filter(|&j| get(mask, n, j)).collect()
}

/// The all-ones string on `n` qubits.
#[inline]
pub fn full(n: usize) -> u64 {
    if n == 0 {
        0
    } else {
        u64::MAX >> (64 - n)
    }
}

/// Renders `x` with character `j` holding qubit `j`.
pub fn format(x: u64, n: usize) -> String {
    (0..n).map(|j| if get(x, n, j) { '1' } else { '0' }).collect()
}

pub fn parse(s: &str) -> Result<(u64, usize)> {
    let n = s.len();
    if n > MAX_QUBITS {
        return Err(Error::invalid(format!("bitstring of length {n} exceeds {MAX_QUBITS}")));
    }
    let mut x = 0u64;
    for c in s.chars() {
        x <<= 1;
        match c {
            '0' => {}
            '1' => x |= 1,
            _ => return Err(Error::invalid(format!("not a bitstring: {s:?}"))),
        }
    }
    Ok((x, n))
}

/// All masks of Hamming weight `w` on `n` qubits, lexicographic in the
/// qubit-index tuples (so `110…` precedes `101…`).
pub fn masks_of_weight(n: usize, w: usize) -> Vec<u64> {
    let mut out = Vec::new();
    if w > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..w).collect();
    loop {
        out.push(mask_of(n, &idx));
        // rightmost position that can still move right
        let mut i = w;
        while i > 0 && idx[i - 1] == n - w + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for k in i..w {
            idx[k] = idx[k - 1] + 1;
        }
    }
}

/// All masks of weight at most `c`, ordered by weight then lexicographically.
pub fn masks_up_to(n: usize, c: usize) -> Vec<u64> {
    (0..=c.min(n)).flat_map(|w| masks_of_weight(n, w)).collect()
}

/// `Σ_{i ≤ c} C(n, i)` without enumerating.
pub fn count_masks_up_to(n: usize, c: usize) -> u128 {
    let mut total = 0u128;
    let mut binom = 1u128;
    for i in 0..=c.min(n) {
        if i > 0 {
            binom = binom * (n - i + 1) as u128 / i as u128;
        }
        total += binom;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn big_endian_layout() {
        assert_eq!(qubit_bit(3, 0), 0b100);
        assert_eq!(format(0b110, 3), "110");
        assert_eq!(parse("0110").unwrap(), (0b0110, 4));
        assert!(parse("01a").is_err());
    }

    #[test]
    fn weight_classes_are_lexicographic_and_complete() {
        let m = masks_of_weight(4, 2);
        let rendered: Vec<_> = m.iter().map(|&x| format(x, 4)).collect();
        assert_eq!(rendered, ["1100", "1010", "1001", "0110", "0101", "0011"]);
        assert_eq!(masks_of_weight(5, 0), vec![0]);
        assert_eq!(masks_of_weight(3, 3), vec![0b111]);
        assert!(masks_of_weight(2, 3).is_empty());
        for n in 1..9 {
            for c in 0..=n {
                assert_eq!(masks_up_to(n, c).len() as u128, count_masks_up_to(n, c));
            }
        }
    }
}
