//! Radix-2 complex FFT and the 2D transforms built on it.
//!
//! Forward transforms are unnormalized, `X[l] = sum_y x[y] e^{-2 pi i y l / p}`;
//! inverse transforms carry the `1/(H W)` factor so `inverse(forward(x)) == x`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Precomputed tables for one power-of-two length.
#[derive(Debug)]
pub struct FftPlan {
    n: usize,
    /// `e^{-2 pi i k / n}` for `k < n/2`.
    twiddles: Vec<Complex64>,
    bit_rev: Vec<usize>,
}

impl FftPlan {
    pub fn new(n: usize) -> Result<Self> {
        if !n.is_power_of_two() {
            return Err(Error::Contract(format!("FFT length {n} is not a power of two")));
        }
        let twiddles = (0..n / 2)
            .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
            .collect();
        let bits = n.trailing_zeros();
        let bit_rev = (0..n)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) })
            .collect();
        Ok(FftPlan {
            n,
            twiddles,
            bit_rev,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place unnormalized forward transform.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, false);
    }

    /// In-place unnormalized inverse transform (no `1/n` factor).
    pub fn backward(&self, data: &mut [Complex64]) {
        self.run(data, true);
    }

    fn run(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.n;
        debug_assert_eq!(data.len(), n);
        for i in 0..n {
            let j = self.bit_rev[i];
            if i < j {
                data.swap(i, j);
            }
        }
        let mut half = 1;
        while half < n {
            let stride = n / (2 * half);
            for start in (0..n).step_by(2 * half) {
                for k in 0..half {
                    let mut w = self.twiddles[k * stride];
                    if inverse {
                        w = w.conj();
                    }
                    let a = data[start + k];
                    let b = data[start + k + half] * w;
                    data[start + k] = a + b;
                    data[start + k + half] = a - b;
                }
            }
            half *= 2;
        }
    }
}

/// Shared plan cache; plans are immutable once built.
pub fn plan(n: usize) -> Result<Arc<FftPlan>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<FftPlan>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().expect("fft plan cache poisoned");
    if let Some(p) = map.get(&n) {
        return Ok(Arc::clone(p));
    }
    let p = Arc::new(FftPlan::new(n)?);
    map.insert(n, Arc::clone(&p));
    Ok(p)
}

/// 2D transform helper for an `h x w` row-major grid.
#[derive(Clone, Debug)]
pub struct Fft2 {
    h: usize,
    w: usize,
    rows: Arc<FftPlan>,
    cols: Arc<FftPlan>,
}

impl Fft2 {
    pub fn new(h: usize, w: usize) -> Result<Self> {
        Ok(Fft2 {
            h,
            w,
            rows: plan(w)?,
            cols: plan(h)?,
        })
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.forward_columns(data, self.w);
    }

    /// Normalized inverse.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.backward_columns(data, self.w);
        let scale = 1.0 / (self.h * self.w) as f64;
        for z in data.iter_mut() {
            *z *= scale;
        }
    }

    /// Forward transform that only produces the first `keep_cols` columns
    /// of the spectrum correctly; the remaining columns hold row spectra.
    pub fn forward_columns(&self, data: &mut [Complex64], keep_cols: usize) {
        debug_assert_eq!(data.len(), self.h * self.w);
        for row in data.chunks_exact_mut(self.w) {
            self.rows.forward(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); self.h];
        for c in 0..keep_cols.min(self.w) {
            for r in 0..self.h {
                col[r] = data[r * self.w + c];
            }
            self.cols.forward(&mut col);
            for r in 0..self.h {
                data[r * self.w + c] = col[r];
            }
        }
    }

    /// Unnormalized inverse assuming every column at or past `nonzero_cols`
    /// is identically zero.
    pub fn backward_columns(&self, data: &mut [Complex64], nonzero_cols: usize) {
        debug_assert_eq!(data.len(), self.h * self.w);
        let mut col = vec![Complex64::new(0.0, 0.0); self.h];
        for c in 0..nonzero_cols.min(self.w) {
            for r in 0..self.h {
                col[r] = data[r * self.w + c];
            }
            self.cols.backward(&mut col);
            for r in 0..self.h {
                data[r * self.w + c] = col[r];
            }
        }
        for row in data.chunks_exact_mut(self.w) {
            self.rows.backward(row);
        }
    }
}

/// Unnormalized forward 2D DFT of a complex `h x w` field.
pub fn fft2_forward(data: &[Complex64], h: usize, w: usize) -> Result<Vec<Complex64>> {
    check_len(data.len(), h, w)?;
    let mut out = data.to_vec();
    Fft2::new(h, w)?.forward(&mut out);
    Ok(out)
}

/// Inverse 2D DFT with `1/(h w)` normalization.
pub fn fft2_inverse(data: &[Complex64], h: usize, w: usize) -> Result<Vec<Complex64>> {
    check_len(data.len(), h, w)?;
    let mut out = data.to_vec();
    Fft2::new(h, w)?.inverse(&mut out);
    Ok(out)
}

/// Forward transform of a real field.
pub fn fft2_real(values: &[f64], h: usize, w: usize) -> Result<Vec<Complex64>> {
    check_len(values.len(), h, w)?;
    let mut out: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    Fft2::new(h, w)?.forward(&mut out);
    Ok(out)
}

fn check_len(len: usize, h: usize, w: usize) -> Result<()> {
    if len != h * w {
        return Err(Error::Shape(format!("{len} values for a {h}x{w} transform")));
    }
    Ok(())
}

/// Signed frequency of index `k` on a length-`n` axis, in `[-n/2, n/2)`.
#[inline]
pub fn signed_frequency(k: usize, n: usize) -> i64 {
    if k < n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn direct_dft(x: &[Complex64], h: usize, w: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); h * w];
        for l1 in 0..h {
            for l2 in 0..w {
                let mut acc = Complex64::new(0.0, 0.0);
                for y1 in 0..h {
                    for y2 in 0..w {
                        let phase = -2.0 * PI
                            * ((y1 * l1) as f64 / h as f64 + (y2 * l2) as f64 / w as f64);
                        acc += x[y1 * w + y2] * Complex64::from_polar(1.0, phase);
                    }
                }
                out[l1 * w + l2] = acc;
            }
        }
        out
    }

    fn random(h: usize, w: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..h * w)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn constant_field_is_dc_only() {
        let c = 2.5;
        let x = vec![Complex64::new(c, 0.0); 16];
        let s = fft2_forward(&x, 4, 4).unwrap();
        assert!((s[0].re - 16.0 * c).abs() < 1e-12);
        assert!(s[1..].iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn impulse_is_flat() {
        let mut x = vec![Complex64::new(0.0, 0.0); 16];
        x[0] = Complex64::new(1.0, 0.0);
        let s = fft2_forward(&x, 4, 4).unwrap();
        assert!(s.iter().all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-12));
    }

    #[test]
    fn matches_direct_dft_rectangular() {
        let x = random(4, 8, 3);
        let fast = fft2_forward(&x, 4, 8).unwrap();
        let slow = direct_dft(&x, 4, 8);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn round_trip_64() {
        let x = random(64, 64, 11);
        let back = fft2_inverse(&fft2_forward(&x, 64, 64).unwrap(), 64, 64).unwrap();
        let err = x.iter().zip(&back).fold(0.0_f64, |m, (a, b)| m.max((a - b).norm()));
        assert!(err <= 1e-10, "round trip error {err}");
    }

    #[test]
    fn round_trip_256() {
        let x = random(256, 256, 12);
        let back = fft2_inverse(&fft2_forward(&x, 256, 256).unwrap(), 256, 256).unwrap();
        let err = x.iter().zip(&back).fold(0.0_f64, |m, (a, b)| m.max((a - b).norm()));
        assert!(err <= 1e-10, "round trip error {err}");
    }

    proptest::proptest! {
        #[test]
        fn parseval(log_h in 0u32..7, log_w in 0u32..7, seed in proptest::prelude::any::<u64>()) {
            let (h, w) = (1usize << log_h, 1usize << log_w);
            let x = random(h, w, seed);
            let s = fft2_forward(&x, h, w).unwrap();
            let ex: f64 = x.iter().map(|z| z.norm_sqr()).sum();
            let es: f64 = s.iter().map(|z| z.norm_sqr()).sum::<f64>() / (h * w) as f64;
            proptest::prop_assert!((ex - es).abs() <= 1e-8 * ex);
        }
    }

    #[test]
    fn non_power_of_two_rejected() {
        assert!(FftPlan::new(12).is_err());
        assert!(fft2_forward(&[Complex64::new(0.0, 0.0); 12], 3, 4).is_err());
    }

    #[test]
    fn length_one_is_identity() {
        let p = FftPlan::new(1).unwrap();
        let mut d = [Complex64::new(3.0, -1.0)];
        p.forward(&mut d);
        assert_eq!(d[0], Complex64::new(3.0, -1.0));
    }

    #[test]
    fn signed_frequencies() {
        assert_eq!(signed_frequency(0, 8), 0);
        assert_eq!(signed_frequency(3, 8), 3);
        assert_eq!(signed_frequency(4, 8), -4);
        assert_eq!(signed_frequency(7, 8), -1);
    }
}
