//! Fixed 32x8 low-discrepancy table used to spread RIS candidates, with
//! Cranley-Patterson rotation per draw.
//!
//! The table holds the first 256 elements of the base-2 radical-inverse
//! sequence in row-major order. Indices 8r..8r+7 differ only in their low
//! three bits, which the radical inverse maps to the leading digits, so every
//! row places exactly one value in each of the eight intervals [j/8, (j+1)/8).

use rand::Rng;
use std::sync::OnceLock;

pub const QRNG_ROWS: usize = 32;
pub const QRNG_DIMS: usize = 8;

fn radical_inverse_base2(mut index: u32) -> f64 {
    let mut acc = 0u32;
    let mut bit = 0;
    while index != 0 {
        if index & 1 == 1 {
            acc |= 1u32 << (31 - bit);
        }
        index >>= 1;
        bit += 1;
    }
    acc as f64 / (1u64 << 32) as f64
}

/// The 32x8 table: element (r, d) is point 8r + d of the base-2 sequence.
pub fn qrng_table() -> &'static [[f64; QRNG_DIMS]; QRNG_ROWS] {
    static TABLE: OnceLock<[[f64; QRNG_DIMS]; QRNG_ROWS]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = [[0.0; QRNG_DIMS]; QRNG_ROWS];
        for (r, row) in table.iter_mut().enumerate() {
            for (d, slot) in row.iter_mut().enumerate() {
                *slot = radical_inverse_base2((r * QRNG_DIMS + d) as u32);
            }
        }
        table
    })
}

/// Draws one uniformly chosen row, shifted by a single uniform offset and
/// wrapped modulo 1.
pub fn qrng_row<R: Rng>(rng: &mut R) -> [f64; QRNG_DIMS] {
    let table = qrng_table();
    let row = table[rng.random_range(0..QRNG_ROWS)];
    let shift: f64 = rng.random();
    let mut out = [0.0; QRNG_DIMS];
    for (o, v) in out.iter_mut().zip(row.iter()) {
        let s = v + shift;
        *o = s - s.floor();
        // modulo contract: strictly inside [0, 1)
        if *o >= 1.0 {
            *o = 0.0;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::star_discrepancy_1d;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn table_is_the_radical_inverse_sequence() {
        let t = qrng_table();
        assert_eq!(t[0][0], 0.0);
        assert_eq!(t[0][1], 0.5);
        assert_eq!(t[0][2], 0.25);
        assert_eq!(t[0][3], 0.75);
        assert_eq!(t[1][0], radical_inverse_base2(8));
        assert_eq!(t[31][7], radical_inverse_base2(255));
    }

    #[test]
    fn rows_are_stratified() {
        // rotation shifts all elements together, so stratification into
        // eighths survives the wrap up to a cyclic relabeling
        let t = qrng_table();
        for r in 0..QRNG_ROWS {
            let mut bins = [0usize; QRNG_DIMS];
            for v in t[r] {
                bins[(v * QRNG_DIMS as f64) as usize] += 1;
            }
            assert_eq!(bins, [1; QRNG_DIMS], "row {r} is not stratified: {:?}", t[r]);
        }
    }

    #[test]
    fn zero_shift_returns_row_verbatim() {
        let t = qrng_table();
        for r in 0..QRNG_ROWS {
            for d in 0..QRNG_DIMS {
                let s = t[r][d] + 0.0;
                let wrapped = s - s.floor();
                assert_eq!(wrapped, t[r][d]);
            }
        }
    }

    #[test]
    fn outputs_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10_000 {
            for v in qrng_row(&mut rng) {
                assert!((0.0..1.0).contains(&v));
            }
        }
    }

    #[test]
    fn rotated_rows_beat_uniform_discrepancy() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let draws = 10_000;
        let mut d_qrng = 0.0;
        let mut d_unif = 0.0;
        for _ in 0..draws {
            let row = qrng_row(&mut rng);
            d_qrng += star_discrepancy_1d(&row);
            let unif: Vec<f64> = (0..QRNG_DIMS).map(|_| rng.random()).collect();
            d_unif += star_discrepancy_1d(&unif);
        }
        assert!(
            d_qrng < d_unif,
            "mean discrepancy qrng {} vs uniform {}",
            d_qrng / draws as f64,
            d_unif / draws as f64
        );
    }
}
