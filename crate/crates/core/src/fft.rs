//! Linear convolution of nonnegative mass vectors: direct below a size
//! threshold, FFT above it. With the `std` feature the transform comes from
//! `realfft`; otherwise a built-in radix-2 transform is used.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::{Add, Mul, Sub};

use crate::math::abs;

/// Output length at which convolution switches to the frequency domain.
pub const FFT_THRESHOLD: usize = 1 << 12;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct C64 {
    re: f64,
    im: f64,
}

impl Add for C64 {
    type Output = C64;
    #[inline]
    fn add(self, o: C64) -> C64 {
        C64 {
            re: self.re + o.re,
            im: self.im + o.im,
        }
    }
}

impl Sub for C64 {
    type Output = C64;
    #[inline]
    fn sub(self, o: C64) -> C64 {
        C64 {
            re: self.re - o.re,
            im: self.im - o.im,
        }
    }
}

impl Mul for C64 {
    type Output = C64;
    #[inline]
    fn mul(self, o: C64) -> C64 {
        C64 {
            re: self.re * o.re - self.im * o.im,
            im: self.re * o.im + self.im * o.re,
        }
    }
}

/// In-place iterative radix-2 transform. `inverse` uses the conjugate
/// twiddles and does not rescale.
fn transform(data: &mut [C64], twiddles: &[C64], inverse: bool) {
    let n = data.len();
    debug_assert!(n.is_power_of_two());
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            data.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let stride = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let mut w = twiddles[k * stride];
                if inverse {
                    w.im = -w.im;
                }
                let u = data[start + k];
                let v = data[start + k + half] * w;
                data[start + k] = u + v;
                data[start + k + half] = u - v;
            }
        }
        len <<= 1;
    }
}

fn twiddles(n: usize) -> Vec<C64> {
    (0..n / 2)
        .map(|k| {
            let angle = -2.0 * PI * k as f64 / n as f64;
            C64 {
                re: libm::cos(angle),
                im: libm::sin(angle),
            }
        })
        .collect()
}

fn direct(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (o, &y) in out[i..].iter_mut().zip(b) {
            *o += x * y;
        }
    }
    out
}

#[cfg_attr(feature = "std", allow(dead_code))]
fn spectral(a: &[f64], b: &[f64]) -> Vec<f64> {
    let len = a.len() + b.len() - 1;
    let size = len.next_power_of_two();
    let tw = twiddles(size);
    let lift = |xs: &[f64]| {
        let mut v = vec![C64::default(); size];
        for (slot, &x) in v.iter_mut().zip(xs) {
            slot.re = x;
        }
        v
    };
    let mut fa = lift(a);
    transform(&mut fa, &tw, false);
    if core::ptr::eq(a, b) {
        for x in fa.iter_mut() {
            *x = *x * *x;
        }
    } else {
        let mut fb = lift(b);
        transform(&mut fb, &tw, false);
        for (x, y) in fa.iter_mut().zip(&fb) {
            *x = *x * *y;
        }
    }
    transform(&mut fa, &tw, true);
    let scale = 1.0 / size as f64;
    let out: Vec<f64> = fa[..len].iter().map(|c| (c.re * scale).max(0.0)).collect();
    out
}

/// Smallest `2^i 3^j >= n`.
#[cfg(feature = "std")]
fn smooth_size(n: usize) -> usize {
    let mut best = n.next_power_of_two();
    let mut three = 1usize;
    while three < best {
        let mut size = three;
        while size < n {
            size *= 2;
        }
        best = best.min(size);
        three *= 3;
    }
    best
}

#[cfg(feature = "std")]
fn spectral_real(a: &[f64], b: &[f64]) -> Vec<f64> {
    use realfft::num_complex::Complex;
    use realfft::RealFftPlanner;

    let len = a.len() + b.len() - 1;
    let size = smooth_size(len);
    let mut planner = RealFftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(size);
    let inverse = planner.plan_fft_inverse(size);
    let spectrum = |xs: &[f64]| {
        let mut input = vec![0.0; size];
        input[..xs.len()].copy_from_slice(xs);
        let mut out = forward.make_output_vec();
        forward
            .process(&mut input, &mut out)
            .expect("buffer sizes match the plan");
        out
    };
    let mut fa = spectrum(a);
    if core::ptr::eq(a, b) {
        for x in fa.iter_mut() {
            *x = *x * *x;
        }
    } else {
        for (x, y) in fa.iter_mut().zip(&spectrum(b)) {
            *x *= *y;
        }
    }
    // round-off leaves tiny imaginary parts where the spectrum must be real
    fa[0].im = 0.0;
    if size % 2 == 0 {
        fa[size / 2] = Complex::new(fa[size / 2].re, 0.0);
    }
    let mut out = vec![0.0; size];
    inverse.process(&mut fa, &mut out).expect("buffer sizes match the plan");
    let scale = 1.0 / size as f64;
    out.truncate(len);
    for x in out.iter_mut() {
        *x = (*x * scale).max(0.0);
    }
    out
}

/// Frequency-domain outputs below this multiple of `EPSILON * max` are
/// round-off and are set to zero.
const NOISE_FLOOR: f64 = 16.0 * f64::EPSILON;

/// Full linear convolution of two nonempty mass vectors. Frequency-domain
/// outputs at the round-off level are zeroed, so the result can carry
/// slightly less mass than `sum(a) * sum(b)`.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    assert!(!a.is_empty() && !b.is_empty(), "convolution of empty sequence");
    if a.len() + b.len() - 1 < FFT_THRESHOLD {
        return direct(a, b);
    }
    #[cfg(feature = "std")]
    let mut out = spectral_real(a, b);
    #[cfg(not(feature = "std"))]
    let mut out = spectral(a, b);
    let floor = NOISE_FLOOR * out.iter().copied().fold(0.0, f64::max);
    for x in out.iter_mut() {
        if *x < floor {
            *x = 0.0;
        }
    }
    debug_assert!({
        let want: f64 = a.iter().sum::<f64>() * b.iter().sum::<f64>();
        let got: f64 = out.iter().sum();
        abs(got - want) <= 1e-9 * want.max(1.0)
    });
    out
}
