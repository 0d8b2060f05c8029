//! Scalar math on top of `libm`, plus the few numerical kernels shared by the
//! discretizer and the oracle.

pub(crate) use libm::{ceil, erfc, exp, expm1, fabs as abs, floor, log as ln, log1p as ln_1p};

use core::f64::consts::FRAC_1_SQRT_2;

/// Standard normal CDF.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal survival function, accurate deep into the upper tail.
#[inline]
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// Tail-accurate value of the standard normal law at `x`: the CDF when
/// `x <= 0`, the survival function otherwise. Always at most 1/2.
#[derive(Clone, Copy, Debug)]
pub(crate) struct TailValue {
    x: f64,
    v: f64,
}

impl TailValue {
    #[inline]
    pub(crate) fn at(x: f64) -> Self {
        let v = if x <= 0.0 { normal_cdf(x) } else { normal_sf(x) };
        Self { x, v }
    }

    /// Standard normal mass of `(self.x, other.x]`, with `self.x <= other.x`.
    #[inline]
    pub(crate) fn mass_to(self, other: TailValue) -> f64 {
        let m = match (self.x <= 0.0, other.x <= 0.0) {
            (true, true) => other.v - self.v,
            (false, false) => self.v - other.v,
            (true, false) => 1.0 - other.v - self.v,
            // other.x <= 0 < self.x only happens for an empty interval
            (false, true) => 0.0,
        };
        m.max(0.0)
    }
}

/// Standard normal mass of `(a, b]`, computed without cancellation in
/// either tail. Infinite endpoints are allowed.
pub fn normal_interval(a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    TailValue::at(a).mass_to(TailValue::at(b))
}

/// Compensated (Neumaier) summation.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    #[inline]
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if abs(self.sum) >= abs(x) {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_mass_matches_cdf_difference_near_center() {
        let m = normal_interval(-0.5, 0.5);
        assert!((m - 0.382_924_922_548_026).abs() < 1e-15);
    }

    #[test]
    fn interval_mass_keeps_relative_accuracy_in_tails() {
        // Phi(-30) - Phi(-31) and its mirror image
        let left = normal_interval(-31.0, -30.0);
        let right = normal_interval(30.0, 31.0);
        assert!(left > 0.0);
        assert!((left - right).abs() <= 1e-14 * left);
        assert_eq!(normal_interval(1.0, 1.0), 0.0);
        assert!((normal_interval(f64::NEG_INFINITY, f64::INFINITY) - 1.0).abs() < 1e-16);
    }
}
