//! Truncated spectral convolution and its adjoint.
//!
//! Retained modes are rows `[0, m)` (block 0) and `[H - m, H)` (block 1)
//! crossed with columns `[0, m)`. Weights are laid out
//! `[block][row mode][col mode][out][in]`. The output is
//! `Re(IFFT2(c * A))` with `A_o = sum_i W_oi X_i` on the retained set and
//! `c = 2` for nonzero columns, which equals the inverse real FFT of the
//! half spectrum (the conjugate columns are implied).

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::Fft2;

#[derive(Clone, Debug)]
pub struct SpectralShape {
    pub width: usize,
    pub h: usize,
    pub w: usize,
    pub modes: usize,
    fft: Fft2,
}

impl SpectralShape {
    pub fn new(width: usize, h: usize, w: usize, modes: usize) -> Result<Self> {
        if modes == 0 || 2 * modes > h || 2 * modes > w {
            return Err(Error::Contract(format!(
                "{modes} modes need a grid of at least {0}x{0}, got {h}x{w}",
                2 * modes
            )));
        }
        Ok(SpectralShape {
            width,
            h,
            w,
            modes,
            fft: Fft2::new(h, w)?,
        })
    }

    /// Retained modes per channel, `2 m^2`.
    pub fn n_modes(&self) -> usize {
        2 * self.modes * self.modes
    }

    pub fn weight_len(&self) -> usize {
        self.n_modes() * self.width * self.width
    }

    /// Grid position of retained mode `k`.
    #[inline]
    fn position(&self, k: usize) -> (usize, usize, f64) {
        let m = self.modes;
        let (block, rest) = (k / (m * m), k % (m * m));
        let (rm, c) = (rest / m, rest % m);
        let row = if block == 0 { rm } else { self.h - m + rm };
        (row, c, if c == 0 { 1.0 } else { 2.0 })
    }
}

/// Forward pass. Returns `width x h x w` output and the retained input
/// spectrum laid out `[mode][channel]`, which the adjoint needs.
pub fn spectral_forward(
    shape: &SpectralShape,
    x: &[f64],
    re: &[f64],
    im: &[f64],
) -> (Vec<f64>, Vec<Complex64>) {
    let (wd, hw, nk) = (shape.width, shape.h * shape.w, shape.n_modes());
    debug_assert_eq!(x.len(), wd * hw);
    debug_assert_eq!(re.len(), shape.weight_len());
    let zero = Complex64::new(0.0, 0.0);
    let mut buf = vec![zero; hw];
    let mut x_hat = vec![zero; nk * wd];
    for i in 0..wd {
        for (b, &v) in buf.iter_mut().zip(&x[i * hw..(i + 1) * hw]) {
            *b = Complex64::new(v, 0.0);
        }
        shape.fft.forward_columns(&mut buf, shape.modes);
        for k in 0..nk {
            let (r, c, _) = shape.position(k);
            x_hat[k * wd + i] = buf[r * shape.w + c];
        }
    }
    let mut a = vec![zero; nk * wd];
    for k in 0..nk {
        let xs = &x_hat[k * wd..(k + 1) * wd];
        for o in 0..wd {
            let base = (k * wd + o) * wd;
            let (wr, wi) = (&re[base..base + wd], &im[base..base + wd]);
            let mut acc = zero;
            for i in 0..wd {
                acc += Complex64::new(wr[i], wi[i]) * xs[i];
            }
            a[k * wd + o] = acc;
        }
    }
    let mut y = vec![0.0; wd * hw];
    let scale = 1.0 / hw as f64;
    for o in 0..wd {
        buf.fill(zero);
        for k in 0..nk {
            let (r, c, f) = shape.position(k);
            buf[r * shape.w + c] = a[k * wd + o] * f;
        }
        shape.fft.backward_columns(&mut buf, shape.modes);
        for (dst, z) in y[o * hw..(o + 1) * hw].iter_mut().zip(&buf) {
            *dst = z.re * scale;
        }
    }
    (y, x_hat)
}

pub struct SpectralGrads {
    pub x: Vec<f64>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

pub fn spectral_backward(
    shape: &SpectralShape,
    x_hat: &[Complex64],
    re: &[f64],
    im: &[f64],
    gy: &[f64],
) -> SpectralGrads {
    let (wd, hw, nk) = (shape.width, shape.h * shape.w, shape.n_modes());
    let zero = Complex64::new(0.0, 0.0);
    let mut buf = vec![zero; hw];
    // gradient w.r.t. the scaled spectrum, times c, per [mode][out]
    let mut ga = vec![zero; nk * wd];
    let inv_n = 1.0 / hw as f64;
    for o in 0..wd {
        for (b, &v) in buf.iter_mut().zip(&gy[o * hw..(o + 1) * hw]) {
            *b = Complex64::new(v, 0.0);
        }
        shape.fft.forward_columns(&mut buf, shape.modes);
        for k in 0..nk {
            let (r, c, f) = shape.position(k);
            ga[k * wd + o] = buf[r * shape.w + c] * (f * inv_n);
        }
    }
    let mut g_re = vec![0.0; shape.weight_len()];
    let mut g_im = vec![0.0; shape.weight_len()];
    let mut gx_hat = vec![zero; nk * wd];
    for k in 0..nk {
        let xs = &x_hat[k * wd..(k + 1) * wd];
        for o in 0..wd {
            let g = ga[k * wd + o];
            let base = (k * wd + o) * wd;
            for i in 0..wd {
                let gw = g * xs[i].conj();
                g_re[base + i] = gw.re;
                g_im[base + i] = gw.im;
                gx_hat[k * wd + i] += g * Complex64::new(re[base + i], -im[base + i]);
            }
        }
    }
    let mut gx = vec![0.0; wd * hw];
    for i in 0..wd {
        buf.fill(zero);
        for k in 0..nk {
            let (r, c, _) = shape.position(k);
            buf[r * shape.w + c] = gx_hat[k * wd + i];
        }
        shape.fft.backward_columns(&mut buf, shape.modes);
        for (dst, z) in gx[i * hw..(i + 1) * hw].iter_mut().zip(&buf) {
            *dst = z.re;
        }
    }
    SpectralGrads {
        x: gx,
        re: g_re,
        im: g_im,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft::signed_frequency;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    /// Direct evaluation: DFT by summation, contraction on the retained set
    /// with explicit conjugate completion, inverse DFT by summation.
    fn brute_force(s: &SpectralShape, x: &[f64], re: &[f64], im: &[f64]) -> Vec<f64> {
        let (wd, h, w, m) = (s.width, s.h, s.w, s.modes);
        let dft = |ch: &[f64], kr: usize, kc: usize| -> Complex64 {
            let mut acc = Complex64::new(0.0, 0.0);
            for n1 in 0..h {
                for n2 in 0..w {
                    let ph = -2.0 * PI * ((kr * n1) as f64 / h as f64 + (kc * n2) as f64 / w as f64);
                    acc += ch[n1 * w + n2] * Complex64::from_polar(1.0, ph);
                }
            }
            acc
        };
        // full spectrum of each output channel
        let mut spec = vec![vec![Complex64::new(0.0, 0.0); h * w]; wd];
        for block in 0..2 {
            for rm in 0..m {
                let row = if block == 0 { rm } else { h - m + rm };
                for c in 0..m {
                    for o in 0..wd {
                        let mut a = Complex64::new(0.0, 0.0);
                        for i in 0..wd {
                            let idx = ((((block * m + rm) * m + c) * wd) + o) * wd + i;
                            a += Complex64::new(re[idx], im[idx]) * dft(&x[i * h * w..(i + 1) * h * w], row, c);
                        }
                        if c == 0 {
                            // Hermitian part of the zero column
                            spec[o][row * w] += a * 0.5;
                            let mirror = (h - row) % h;
                            spec[o][mirror * w] += a.conj() * 0.5;
                        } else {
                            spec[o][row * w + c] += a;
                            let (mr, mc) = ((h - row) % h, w - c);
                            spec[o][mr * w + mc] += a.conj();
                        }
                    }
                }
            }
        }
        let mut y = vec![0.0; wd * h * w];
        for o in 0..wd {
            for n1 in 0..h {
                for n2 in 0..w {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for kr in 0..h {
                        for kc in 0..w {
                            let ph = 2.0 * PI * ((kr * n1) as f64 / h as f64 + (kc * n2) as f64 / w as f64);
                            acc += spec[o][kr * w + kc] * Complex64::from_polar(1.0, ph);
                        }
                    }
                    assert!(acc.im.abs() <= 1e-9 * (h * w) as f64, "imaginary residue {}", acc.im);
                    y[o * h * w + n1 * w + n2] = acc.re / (h * w) as f64;
                }
            }
        }
        y
    }

    #[test]
    fn matches_direct_summation() {
        let s = SpectralShape::new(2, 8, 8, 2).unwrap();
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random(2 * 64, &mut rng);
            let re = random(s.weight_len(), &mut rng);
            let im = random(s.weight_len(), &mut rng);
            let (y, _) = spectral_forward(&s, &x, &re, &im);
            let oracle = brute_force(&s, &x, &re, &im);
            for (a, b) in y.iter().zip(&oracle) {
                assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
            }
        }
    }

    fn identity_weights(s: &SpectralShape) -> (Vec<f64>, Vec<f64>) {
        let mut re = vec![0.0; s.weight_len()];
        for k in 0..s.n_modes() {
            for o in 0..s.width {
                re[(k * s.width + o) * s.width + o] = 1.0;
            }
        }
        (re, vec![0.0; s.weight_len()])
    }

    #[test]
    fn identity_passes_band_limited_input() {
        let (h, w, m) = (16, 16, 4);
        let s = SpectralShape::new(2, h, w, m).unwrap();
        let (re, im) = identity_weights(&s);
        let x: Vec<f64> = (0..2)
            .flat_map(|ch| {
                (0..h * w).map(move |p| {
                    let (r, c) = ((p / w) as f64, (p % w) as f64);
                    let t = 2.0 * PI / 16.0;
                    (t * (3.0 * r + ch as f64)).cos() + 0.5 * (t * (2.0 * c - r)).sin() + 0.25
                })
            })
            .collect();
        let (y, _) = spectral_forward(&s, &x, &re, &im);
        for (a, b) in y.iter().zip(&x) {
            assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn identity_removes_high_frequencies() {
        let (h, w, m) = (16, 16, 4);
        let s = SpectralShape::new(1, h, w, m).unwrap();
        let (re, im) = identity_weights(&s);
        let x: Vec<f64> = (0..h * w).map(|p| (2.0 * PI * 6.0 * (p % w) as f64 / w as f64).sin()).collect();
        let (y, _) = spectral_forward(&s, &x, &re, &im);
        assert!(y.iter().all(|v| v.abs() <= 1e-9));
    }

    #[test]
    fn output_is_band_limited() {
        let s = SpectralShape::new(3, 16, 16, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(3 * 256, &mut rng);
        let re = random(s.weight_len(), &mut rng);
        let im = random(s.weight_len(), &mut rng);
        let (y, _) = spectral_forward(&s, &x, &re, &im);
        for o in 0..3 {
            let spec = crate::fft::fft2_real(&y[o * 256..(o + 1) * 256], 16, 16).unwrap();
            for r in 0..16 {
                for c in 0..16 {
                    let (fr, fc) = (signed_frequency(r, 16), signed_frequency(c, 16));
                    let held = |r: i64, c: i64| (-3..3).contains(&r) && (0..3).contains(&c);
                    // conjugate partners of retained modes carry energy too
                    let kept = held(fr, fc) || held(-fr, -fc);
                    if !kept {
                        assert!(spec[r * 16 + c].norm() <= 1e-9, "energy at ({fr}, {fc})");
                    }
                }
            }
        }
    }

    #[test]
    fn adjoint_identity() {
        // <gy, S x> = <S^T gy, x> and the weight gradients are the
        // derivative of the same bilinear form
        let s = SpectralShape::new(2, 8, 16, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random(2 * 128, &mut rng);
        let re = random(s.weight_len(), &mut rng);
        let im = random(s.weight_len(), &mut rng);
        let gy = random(2 * 128, &mut rng);
        let (y, x_hat) = spectral_forward(&s, &x, &re, &im);
        let g = spectral_backward(&s, &x_hat, &re, &im, &gy);
        let lhs: f64 = gy.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = g.x.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
        // the map is linear in the weights as well
        let rhs_w: f64 = g.re.iter().zip(&re).map(|(a, b)| a * b).sum::<f64>()
            + g.im.iter().zip(&im).map(|(a, b)| a * b).sum::<f64>();
        assert!((lhs - rhs_w).abs() <= 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn modes_must_fit() {
        assert!(SpectralShape::new(2, 8, 8, 5).is_err());
        assert!(SpectralShape::new(2, 12, 12, 2).is_err());
        assert!(SpectralShape::new(2, 8, 8, 4).is_ok());
    }
}
