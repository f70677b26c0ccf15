//! Three-dimensional real-to-complex transforms on cubic grids.
//!
//! Real data is x-fastest (`i + n * (j + n * k)`). Spectra keep only the
//! non-negative x frequencies: `kx + h * (ky + n * kz)` with `h = n / 2 + 1`.
//! Both directions are unnormalized.

use std::sync::Arc;

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Signed frequency of DFT index `m` on `n` points, in `-n/2 ..= n/2 - 1`.
#[inline]
pub fn signed_frequency(m: usize, n: usize) -> i64 {
    if m < n / 2 {
        m as i64
    } else {
        m as i64 - n as i64
    }
}

pub struct RealFft3 {
    n: usize,
    half: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    line: Vec<f64>,
    real_scratch: Vec<Complex64>,
    slab: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl RealFft3 {
    /// Plans transforms for an `n^3` grid; `n` must be even.
    pub fn new(n: usize) -> Self {
        assert!(n >= 2 && n.is_multiple_of(2), "grid size must be even");
        let half = n / 2 + 1;
        let mut real_planner = RealFftPlanner::<f64>::new();
        let r2c = real_planner.plan_fft_forward(n);
        let c2r = real_planner.plan_fft_inverse(n);
        let mut planner = FftPlanner::<f64>::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let real_scratch_len = r2c.get_scratch_len().max(c2r.get_scratch_len());
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            n,
            half,
            r2c,
            c2r,
            forward,
            inverse,
            line: vec![0.0; n],
            real_scratch: vec![Complex64::default(); real_scratch_len],
            slab: vec![Complex64::default(); half * n],
            scratch: vec![Complex64::default(); scratch_len],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Number of stored x frequencies, `n / 2 + 1`.
    pub fn half(&self) -> usize {
        self.half
    }

    pub fn real_len(&self) -> usize {
        self.n.pow(3)
    }

    pub fn spectrum_len(&self) -> usize {
        self.half * self.n * self.n
    }

    pub fn forward(&mut self, input: &[f64], output: &mut [Complex64]) {
        let (n, h) = (self.n, self.half);
        assert_eq!(input.len(), self.real_len());
        assert_eq!(output.len(), self.spectrum_len());
        for (src, dst) in input.chunks_exact(n).zip(output.chunks_exact_mut(h)) {
            self.line.copy_from_slice(src);
            self.r2c
                .process_with_scratch(&mut self.line, dst, &mut self.real_scratch)
                .expect("r2c sizes are fixed at planning");
        }
        self.transform_y(output, true);
        self.transform_z(output, true);
    }

    /// Inverse transform. Destroys `input`.
    pub fn inverse(&mut self, input: &mut [Complex64], output: &mut [f64]) {
        let (n, h) = (self.n, self.half);
        assert_eq!(input.len(), self.spectrum_len());
        assert_eq!(output.len(), self.real_len());
        self.transform_z(input, false);
        self.transform_y(input, false);
        for (src, dst) in input.chunks_exact_mut(h).zip(output.chunks_exact_mut(n)) {
            // The zero and Nyquist x frequencies of a real line are real.
            src[0].im = 0.0;
            src[h - 1].im = 0.0;
            self.c2r
                .process_with_scratch(src, dst, &mut self.real_scratch)
                .expect("c2r sizes are fixed at planning");
        }
    }

    fn transform_y(&mut self, data: &mut [Complex64], forward: bool) {
        let (n, h) = (self.n, self.half);
        let plan = if forward {
            &self.forward
        } else {
            &self.inverse
        };
        for z_slab in data.chunks_exact_mut(h * n) {
            // z_slab is [ky][kx]; lines along y become contiguous in slab[kx][ky].
            for j in 0..n {
                for kx in 0..h {
                    self.slab[kx * n + j] = z_slab[j * h + kx];
                }
            }
            plan.process_with_scratch(&mut self.slab, &mut self.scratch);
            for j in 0..n {
                for kx in 0..h {
                    z_slab[j * h + kx] = self.slab[kx * n + j];
                }
            }
        }
    }

    fn transform_z(&mut self, data: &mut [Complex64], forward: bool) {
        let (n, h) = (self.n, self.half);
        let plan = if forward {
            &self.forward
        } else {
            &self.inverse
        };
        for j in 0..n {
            for k in 0..n {
                let row = h * (j + n * k);
                for kx in 0..h {
                    self.slab[kx * n + k] = data[row + kx];
                }
            }
            plan.process_with_scratch(&mut self.slab, &mut self.scratch);
            for k in 0..n {
                let row = h * (j + n * k);
                for kx in 0..h {
                    data[row + kx] = self.slab[kx * n + k];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn brute_force_dft(input: &[f64], n: usize) -> Vec<Complex64> {
        let mut out = Vec::new();
        for kz in 0..n {
            for ky in 0..n {
                for kx in 0..n {
                    let mut acc = Complex64::default();
                    for z in 0..n {
                        for y in 0..n {
                            for x in 0..n {
                                let phase =
                                    -2.0 * PI * ((kx * x + ky * y + kz * z) as f64) / n as f64;
                                acc +=
                                    input[x + n * (y + n * z)] * Complex64::from_polar(1.0, phase);
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
        out
    }

    fn pseudo_random(len: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..len)
            .map(|_| {
                s = s
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect()
    }

    #[test]
    fn matches_brute_force_dft() {
        for n in [2, 4, 6] {
            let input = pseudo_random(n * n * n, n as u64);
            let full = brute_force_dft(&input, n);
            let mut fft = RealFft3::new(n);
            let mut spec = vec![Complex64::default(); fft.spectrum_len()];
            fft.forward(&input, &mut spec);
            let h = n / 2 + 1;
            for kz in 0..n {
                for ky in 0..n {
                    for kx in 0..h {
                        let a = spec[kx + h * (ky + n * kz)];
                        let b = full[kx + n * (ky + n * kz)];
                        assert!((a - b).norm() < 1e-12, "n={n} ({kx},{ky},{kz}): {a} vs {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn inverse_undoes_forward() {
        let n = 8;
        let input = pseudo_random(n * n * n, 3);
        let mut fft = RealFft3::new(n);
        let mut spec = vec![Complex64::default(); fft.spectrum_len()];
        let mut back = vec![0.0; n * n * n];
        fft.forward(&input, &mut spec);
        fft.inverse(&mut spec, &mut back);
        let scale = 1.0 / (n * n * n) as f64;
        for (a, b) in input.iter().zip(&back) {
            assert!((a - b * scale).abs() < 1e-14);
        }
    }

    #[test]
    fn frequencies() {
        let f: Vec<i64> = (0..6).map(|m| signed_frequency(m, 6)).collect();
        assert_eq!(f, vec![0, 1, 2, -3, -2, -1]);
    }
}
