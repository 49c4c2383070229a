//! Radix-2 complex FFT, one-dimensional and along every axis of a tensor grid.

use alloc::vec::Vec;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const ZERO: Self = Self { re: 0.0, im: 0.0 };

    pub fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    pub fn norm_sqr(self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    fn mul(self, o: Self) -> Self {
        Self::new(
            self.re * o.re - self.im * o.im,
            self.re * o.im + self.im * o.re,
        )
    }
}

/// In-place unnormalized DFT of a power-of-two length buffer.
/// `inverse` flips the exponent sign; no 1/n scaling is applied.
pub fn fft_in_place(data: &mut [Complex], inverse: bool) {
    let n = data.len();
    assert!(n.is_power_of_two(), "fft length must be a power of two");
    if n <= 1 {
        return;
    }
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
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let angle = sign * 2.0 * core::f64::consts::PI / len as f64;
        let half = len / 2;
        let twiddles: Vec<Complex> = (0..half)
            .map(|k| Complex::new(libm::cos(angle * k as f64), libm::sin(angle * k as f64)))
            .collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let a = data[start + k];
                let b = data[start + k + half].mul(twiddles[k]);
                data[start + k] = Complex::new(a.re + b.re, a.im + b.im);
                data[start + k + half] = Complex::new(a.re - b.re, a.im - b.im);
            }
        }
        len <<= 1;
    }
}

/// DFT along every axis of a row-major `n^dim` array.
pub fn fft_nd(data: &mut [Complex], dim: usize, n: usize, inverse: bool) {
    assert_eq!(data.len(), n.pow(dim as u32));
    let mut line = alloc::vec![Complex::ZERO; n];
    for axis in 0..dim {
        let stride = n.pow((dim - 1 - axis) as u32);
        let block = stride * n;
        for outer in (0..data.len()).step_by(block) {
            for inner in 0..stride {
                let base = outer + inner;
                for (k, slot) in line.iter_mut().enumerate() {
                    *slot = data[base + k * stride];
                }
                fft_in_place(&mut line, inverse);
                for (k, value) in line.iter().enumerate() {
                    data[base + k * stride] = *value;
                }
            }
        }
    }
}

/// Signed integer frequency of DFT index `k` on a length-`n` axis.
pub fn signed_frequency(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(x: &[Complex]) -> Vec<Complex> {
        let n = x.len();
        (0..n)
            .map(|k| {
                let mut acc = Complex::ZERO;
                for (j, v) in x.iter().enumerate() {
                    let a = -2.0 * core::f64::consts::PI * (j * k) as f64 / n as f64;
                    let w = Complex::new(libm::cos(a), libm::sin(a));
                    let p = v.mul(w);
                    acc.re += p.re;
                    acc.im += p.im;
                }
                acc
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft_and_inverts() {
        let x: Vec<Complex> = (0..32)
            .map(|i| {
                Complex::new(
                    libm::sin(i as f64 * 0.7) + 0.1 * i as f64,
                    libm::cos(i as f64),
                )
            })
            .collect();
        let mut y = x.clone();
        fft_in_place(&mut y, false);
        for (a, b) in y.iter().zip(naive_dft(&x)) {
            assert!((a.re - b.re).abs() < 1e-11 && (a.im - b.im).abs() < 1e-11);
        }
        fft_in_place(&mut y, true);
        for (a, b) in y.iter().zip(&x) {
            assert!((a.re / 32.0 - b.re).abs() < 1e-13 && (a.im / 32.0 - b.im).abs() < 1e-13);
        }
    }

    #[test]
    fn two_dimensional_mode_lands_in_one_bin() {
        let n = 8;
        let mut data: Vec<Complex> = (0..n * n)
            .map(|idx| {
                let (i, j) = (idx / n, idx % n);
                let a = 2.0 * core::f64::consts::PI * (i as f64 + 2.0 * j as f64) / n as f64;
                Complex::new(libm::cos(a), libm::sin(a))
            })
            .collect();
        fft_nd(&mut data, 2, n, false);
        for (idx, v) in data.iter().enumerate() {
            let expected = if idx == n + 2 { (n * n) as f64 } else { 0.0 };
            assert!(
                (v.re - expected).abs() < 1e-10 && v.im.abs() < 1e-10,
                "idx {idx}"
            );
        }
    }
}
