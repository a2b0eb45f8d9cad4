//! Scalar helpers shared across modules.

/// Order-independent accumulator for non-negative-magnitude reals.
///
/// Terms are converted to 2^-96 fixed point and summed as integers, so the
/// result does not depend on summation order. Used wherever a result must be
/// bit-identical under node relabeling.
#[derive(Debug, Default, Clone, Copy)]
pub struct ExactSum(i128);

const SCALE: f64 = 79_228_162_514_264_337_593_543_950_336.0; // 2^96

impl ExactSum {
    pub fn new() -> Self {
        Self(0)
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        debug_assert!(x.abs() < 1.0e9, "ExactSum term out of range: {x}");
        self.0 += (x * SCALE) as i128;
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / SCALE
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// `ln(sigmoid(x))` without overflow for large |x|.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -libm::log1p(libm::exp(-x))
    } else {
        x - libm::log1p(libm::exp(x))
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
