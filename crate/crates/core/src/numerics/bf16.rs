//! bfloat16 rounding emulation on `f64` values.

/// Machine epsilon of bfloat16: spacing between 1.0 and the next value.
pub const BF16_EPSILON: f64 = 0.007_812_5;

const MANTISSA_BITS: i32 = 7;
const MIN_NORMAL_EXP: i32 = -126;
const MAX_FINITE: f64 = 3.389_531_389_251_535_5e38; // (2 - 2^-7) * 2^127

/// Round to the nearest bfloat16 value (ties to even) and widen back.
///
/// Values beyond the largest finite bfloat16 after rounding become ±∞.
pub fn bf16_round(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    let exp = exponent_of(x.abs()).max(MIN_NORMAL_EXP);
    let ulp = pow2(exp - MANTISSA_BITS);
    let rounded = (x / ulp).round_ties_even() * ulp;
    if rounded.abs() > MAX_FINITE {
        return f64::INFINITY.copysign(x);
    }
    rounded
}

/// floor(log2(|x|)) read from the bit pattern.
fn exponent_of(x: f64) -> i32 {
    let bits = x.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i32;
    if biased == 0 {
        // f64 subnormal; far below bf16 range
        -1075
    } else {
        biased - 1023
    }
}

fn pow2(e: i32) -> f64 {
    2f64.powi(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Reference: truncate an f32 bit pattern to its top 16 bits with
    /// round-to-nearest-even on the dropped half.
    fn reference_from_f32(x: f32) -> f64 {
        let bits = x.to_bits();
        let lsb = (bits >> 16) & 1;
        let rounded = bits.wrapping_add(0x7fff + lsb) & 0xffff_0000;
        f32::from_bits(rounded) as f64
    }

    #[test]
    fn epsilon_behaviour() {
        assert_eq!(bf16_round(1.0 + 2f64.powi(-7)), 1.007_812_5);
        assert_eq!(bf16_round(1.0 + 2f64.powi(-8)), 1.0);
        assert_eq!(bf16_round(0.0), 0.0);
        assert_eq!(bf16_round(1.0 + BF16_EPSILON) - 1.0, BF16_EPSILON);
    }

    #[test]
    fn overflow_goes_to_infinity() {
        assert_eq!(bf16_round(1e39), f64::INFINITY);
        assert_eq!(bf16_round(-1e39), f64::NEG_INFINITY);
        assert_eq!(bf16_round(MAX_FINITE), MAX_FINITE);
    }

    #[test]
    fn matches_f32_bit_truncation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100_000 {
            let mag = 10f32.powf(rng.random_range(-40.0..38.0));
            let x = if rng.random_bool(0.5) { mag } else { -mag };
            let want = reference_from_f32(x);
            let got = bf16_round(x as f64);
            assert!(
                got == want || (got.is_infinite() && want.is_infinite()),
                "x={x:e} got={got:e} want={want:e}"
            );
        }
    }

    #[test]
    fn idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100_000 {
            let x: f64 = rng.random_range(-1e6..1e6) * 10f64.powi(rng.random_range(-30..30));
            let once = bf16_round(x);
            assert_eq!(bf16_round(once).to_bits(), once.to_bits());
        }
    }
}
