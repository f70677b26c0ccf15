//! Effective conductivity by the accelerated (Eyre–Milton) FFT scheme.
//!
//! The matrix conductivity is normalized to 1 and inclusions carry the
//! contrast `c`. The reference medium is `lambda0 * I` with
//! `lambda0 = -sqrt(c)`. Each solve imposes a macroscopic gradient and
//! iterates on the local gradient field:
//!
//! 1. once the compatibility residual is below `acc`, evaluate the flux
//!    `phi = -k grad` and its equilibrium residual; stop when below `acc`;
//! 2. polarization `tau = -(k + lambda0) grad`, transformed;
//! 3. compatible field `-Gamma0 : tau_hat` with the zero frequency pinned
//!    to the macroscopic gradient, transformed back;
//! 4. compatibility residual between the two fields;
//! 5. update `grad -= 2 lambda0 / (k - lambda0) * (comp - grad)`.

use std::f64::consts::PI;
use std::time::Instant;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::SolverError;
use crate::fft::{signed_frequency, RealFft3};
use crate::geometry::Vec3;
use crate::morphology::{PhaseGrid, INCLUSION};

pub const DEFAULT_ACC: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 5000;
/// Floor for the flux norm in the equilibrium residual.
pub const FLUX_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    /// Tolerance on both the compatibility and equilibrium residuals.
    pub acc: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            acc: DEFAULT_ACC,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// Reference conductivity `-sqrt(min * max)` of a two-phase medium with
/// phases `1` and `c`.
pub fn reference_tensor(contrast: f64) -> Result<f64, SolverError> {
    if !(contrast > 0.0 && contrast.is_finite()) {
        return Err(SolverError::InvalidContrast(contrast));
    }
    Ok(-(contrast.min(1.0) * contrast.max(1.0)).sqrt())
}

/// `Gamma0(xi) : tau` for an isotropic reference `lambda0 * I`, `xi != 0`.
pub fn green_apply(tau: [Complex64; 3], xi: Vec3, lambda0: f64) -> [Complex64; 3] {
    let xi2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
    let s = (tau[0] * xi[0] + tau[1] * xi[1] + tau[2] * xi[2]) / (lambda0 * xi2);
    [s * xi[0], s * xi[1], s * xi[2]]
}

/// Per-voxel scalar conductivity: 1 in the matrix, `contrast` in inclusions.
#[derive(Debug, Clone, PartialEq)]
pub struct ConductivityField {
    resolution: usize,
    labels: Vec<u8>,
    contrast: f64,
}

impl ConductivityField {
    pub fn new(grid: &PhaseGrid, contrast: f64) -> Result<Self, SolverError> {
        reference_tensor(contrast)?;
        Ok(Self {
            resolution: grid.resolution(),
            labels: grid.labels().to_vec(),
            contrast,
        })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn contrast(&self) -> f64 {
        self.contrast
    }

    /// `[matrix, inclusion]` conductivities.
    pub fn phase_values(&self) -> [f64; 2] {
        [1.0, self.contrast]
    }

    pub fn at(&self, index: usize) -> f64 {
        self.phase_values()[self.labels[index] as usize]
    }

    pub fn inclusion_fraction(&self) -> f64 {
        self.labels.iter().filter(|&&l| l == INCLUSION).count() as f64 / self.labels.len() as f64
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }
}

/// Converged local gradient for one imposed macroscopic gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub resolution: usize,
    pub components: [Vec<f64>; 3],
    pub macro_gradient: Vec3,
    /// Spatial mean of the flux `-k grad` at convergence.
    pub mean_flux: Vec3,
    /// Number of update steps performed.
    pub iterations: usize,
    pub comp_residual: f64,
    pub eq_residual: f64,
    /// Compatibility residual after each update.
    pub comp_history: Vec<f64>,
}

impl GradientField {
    pub fn mean(&self) -> Vec3 {
        let n = self.components[0].len() as f64;
        let m = |c: &Vec<f64>| c.iter().sum::<f64>() / n;
        [
            m(&self.components[0]),
            m(&self.components[1]),
            m(&self.components[2]),
        ]
    }
}

/// Reusable buffers and transform plans for one grid size.
pub struct Solver {
    fft: RealFft3,
    freq: Vec<f64>,
    grad: [Vec<f64>; 3],
    comp: [Vec<f64>; 3],
    spectra: [Vec<Complex64>; 3],
    real: Vec<f64>,
}

impl Solver {
    pub fn new(resolution: usize) -> Self {
        let fft = RealFft3::new(resolution);
        let n3 = fft.real_len();
        let sl = fft.spectrum_len();
        let freq = (0..resolution)
            .map(|m| 2.0 * PI * signed_frequency(m, resolution) as f64)
            .collect();
        Self {
            fft,
            freq,
            grad: [vec![0.0; n3], vec![0.0; n3], vec![0.0; n3]],
            comp: [vec![0.0; n3], vec![0.0; n3], vec![0.0; n3]],
            spectra: [
                vec![Complex64::default(); sl],
                vec![Complex64::default(); sl],
                vec![Complex64::default(); sl],
            ],
            real: vec![0.0; n3],
        }
    }

    /// Runs the accelerated scheme for the imposed gradient `macro_gradient`.
    pub fn solve(
        &mut self,
        field: &ConductivityField,
        macro_gradient: Vec3,
        settings: &SolverSettings,
    ) -> Result<GradientField, SolverError> {
        assert_eq!(
            field.resolution(),
            self.fft.size(),
            "solver planned for another size"
        );
        if !(settings.acc > 0.0 && settings.acc.is_finite()) {
            return Err(SolverError::InvalidTolerance(settings.acc));
        }
        let e_norm = crate::geometry::norm(macro_gradient);
        if e_norm == 0.0 || !e_norm.is_finite() {
            return Err(SolverError::ZeroGradient);
        }
        let lambda0 = reference_tensor(field.contrast())?;
        let k = field.phase_values();
        let tau_coef = [-(k[0] + lambda0), -(k[1] + lambda0)];
        let update_coef = [
            -2.0 * lambda0 / (k[0] - lambda0),
            -2.0 * lambda0 / (k[1] - lambda0),
        ];
        let flux_coef = [-k[0], -k[1]];
        let labels = field.labels();
        let n3 = labels.len();
        let inv_n3 = 1.0 / n3 as f64;

        for (g, &e) in self.grad.iter_mut().zip(&macro_gradient) {
            g.fill(e);
        }

        let mut comp_residual = f64::INFINITY;
        let mut eq_residual = f64::INFINITY;
        let mut history = Vec::new();
        let mut iterations = 0;
        loop {
            if iterations > 0 && comp_residual < settings.acc {
                for i in 0..3 {
                    for ((r, g), &l) in self.real.iter_mut().zip(&self.grad[i]).zip(labels) {
                        *r = flux_coef[l as usize] * g;
                    }
                    self.fft.forward(&self.real, &mut self.spectra[i]);
                }
                eq_residual = self.equilibrium_residual();
                if eq_residual < settings.acc {
                    let mean_flux = [
                        self.spectra[0][0].re * inv_n3,
                        self.spectra[1][0].re * inv_n3,
                        self.spectra[2][0].re * inv_n3,
                    ];
                    return Ok(GradientField {
                        resolution: field.resolution(),
                        components: self.grad.clone(),
                        macro_gradient,
                        mean_flux,
                        iterations,
                        comp_residual,
                        eq_residual,
                        comp_history: history,
                    });
                }
            }
            if iterations == settings.max_iter {
                return Err(SolverError::NonConvergence {
                    iterations,
                    comp_residual,
                    eq_residual,
                });
            }

            for i in 0..3 {
                for ((r, g), &l) in self.real.iter_mut().zip(&self.grad[i]).zip(labels) {
                    *r = tau_coef[l as usize] * g;
                }
                self.fft.forward(&self.real, &mut self.spectra[i]);
            }
            self.apply_green(lambda0, macro_gradient, inv_n3);
            for i in 0..3 {
                self.fft.inverse(&mut self.spectra[i], &mut self.comp[i]);
            }

            let mut sq = 0.0;
            for i in 0..3 {
                for ((g, c), &l) in self.grad[i].iter_mut().zip(&self.comp[i]).zip(labels) {
                    let diff = c - *g;
                    sq += diff * diff;
                    *g += update_coef[l as usize] * diff;
                }
            }
            comp_residual = (sq * inv_n3).sqrt() / e_norm;
            history.push(comp_residual);
            iterations += 1;
        }
    }

    /// Replaces `tau_hat` by the normalized spectrum of `-Gamma0 : tau_hat`,
    /// with the zero frequency set to the macroscopic gradient.
    ///
    /// Frequencies with a Nyquist component use `Gamma0 = I / lambda0`: the
    /// projector is not Hermitian-consistent there, and this choice keeps the
    /// field real and drives the flux's Nyquist content to zero.
    fn apply_green(&mut self, lambda0: f64, macro_gradient: Vec3, inv_n3: f64) {
        let n = self.fft.size();
        let h = self.fft.half();
        let nyquist = n / 2;
        let freq = &self.freq;
        // -Gamma0 carries 1 / lambda0 on both branches; fold in the normalization.
        let scale = -inv_n3 / lambda0;
        let [s0, s1, s2] = &mut self.spectra;
        for kz in 0..n {
            for ky in 0..n {
                let row = h * (ky + n * kz);
                let (a0, a1, a2) = (
                    &mut s0[row..row + h],
                    &mut s1[row..row + h],
                    &mut s2[row..row + h],
                );
                if ky == nyquist || kz == nyquist {
                    for kx in 0..h {
                        a0[kx] *= scale;
                        a1[kx] *= scale;
                        a2[kx] *= scale;
                    }
                    continue;
                }
                let (xy, xz) = (freq[ky], freq[kz]);
                let yz2 = xy * xy + xz * xz;
                for kx in 0..nyquist {
                    let xx = freq[kx];
                    let xi2 = xx * xx + yz2;
                    if xi2 == 0.0 {
                        continue;
                    }
                    let s = (a0[kx] * xx + a1[kx] * xy + a2[kx] * xz) * (scale / xi2);
                    a0[kx] = s * xx;
                    a1[kx] = s * xy;
                    a2[kx] = s * xz;
                }
                a0[nyquist] *= scale;
                a1[nyquist] *= scale;
                a2[nyquist] *= scale;
            }
        }
        s0[0] = Complex64::new(macro_gradient[0], 0.0);
        s1[0] = Complex64::new(macro_gradient[1], 0.0);
        s2[0] = Complex64::new(macro_gradient[2], 0.0);
    }

    /// `sqrt(<|xi . phi_hat|^2>) / |phi_hat(0)|` over the full spectrum of the
    /// unnormalized transform held in `spectra`.
    fn equilibrium_residual(&self) -> f64 {
        let n = self.fft.size();
        let h = self.fft.half();
        let [s0, s1, s2] = &self.spectra;
        let mut sum = 0.0;
        for kz in 0..n {
            for ky in 0..n {
                let row = h * (ky + n * kz);
                for kx in 0..h {
                    let idx = row + kx;
                    let div =
                        s0[idx] * self.freq[kx] + s1[idx] * self.freq[ky] + s2[idx] * self.freq[kz];
                    // Interior x frequencies stand for themselves and their conjugates.
                    let weight = if kx == 0 || kx == h - 1 { 1.0 } else { 2.0 };
                    sum += weight * div.norm_sqr();
                }
            }
        }
        let n3 = (n * n * n) as f64;
        let mean = sum / n3;
        let flux0 = (s0[0].norm_sqr() + s1[0].norm_sqr() + s2[0].norm_sqr()).sqrt();
        mean.sqrt() / flux0.max(FLUX_FLOOR)
    }
}

/// Runs the accelerated scheme for one imposed gradient.
pub fn accelerated_scheme(
    field: &ConductivityField,
    macro_gradient: Vec3,
    settings: &SolverSettings,
) -> Result<GradientField, SolverError> {
    Solver::new(field.resolution()).solve(field, macro_gradient, settings)
}

/// Homogenized conductivity of one realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveTensor {
    /// Row-major; column `j` is `-<phi>` under a unit gradient along `e_j`.
    pub matrix: [[f64; 3]; 3],
    pub iterations: [usize; 3],
    pub eq_residuals: [f64; 3],
    pub comp_residuals: [f64; 3],
    pub wall_time: f64,
}

impl EffectiveTensor {
    pub fn trace_mean(&self) -> f64 {
        (self.matrix[0][0] + self.matrix[1][1] + self.matrix[2][2]) / 3.0
    }

    pub fn diagonal(&self) -> Vec3 {
        [self.matrix[0][0], self.matrix[1][1], self.matrix[2][2]]
    }

    /// `|A - A^T|_F / |A|_F`.
    #[allow(clippy::needless_range_loop)]
    pub fn asymmetry(&self) -> f64 {
        let m = &self.matrix;
        let mut diff = 0.0;
        let mut total = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                diff += (m[i][j] - m[j][i]).powi(2);
                total += m[i][j].powi(2);
            }
        }
        (diff / total).sqrt()
    }

    pub const CSV_HEADER: &'static str =
        "l11,l12,l13,l21,l22,l23,l31,l32,l33,iter_1,iter_2,iter_3,eq_1,eq_2,eq_3,wall_time_s";

    /// One CSV row: 9 entries row-major, 3 iteration counts, 3 equilibrium
    /// residuals, wall time in seconds.
    pub fn to_csv_row(&self) -> String {
        let mut fields: Vec<String> = self
            .matrix
            .iter()
            .flatten()
            .map(|v| v.to_string())
            .collect();
        fields.extend(self.iterations.iter().map(|v| v.to_string()));
        fields.extend(self.eq_residuals.iter().map(|v| v.to_string()));
        fields.push(self.wall_time.to_string());
        fields.join(",")
    }
}

/// Solves for the three unit gradients and assembles the effective tensor.
pub fn homogenize(
    field: &ConductivityField,
    settings: &SolverSettings,
) -> Result<EffectiveTensor, SolverError> {
    let start = Instant::now();
    let mut solver = Solver::new(field.resolution());
    let mut tensor = EffectiveTensor {
        matrix: [[0.0; 3]; 3],
        iterations: [0; 3],
        eq_residuals: [0.0; 3],
        comp_residuals: [0.0; 3],
        wall_time: 0.0,
    };
    for j in 0..3 {
        let mut e = [0.0; 3];
        e[j] = 1.0;
        let solution =
            solver
                .solve(field, e, settings)
                .map_err(|source| SolverError::Direction {
                    direction: j,
                    source: Box::new(source),
                })?;
        for i in 0..3 {
            tensor.matrix[i][j] = -solution.mean_flux[i];
        }
        tensor.iterations[j] = solution.iterations;
        tensor.eq_residuals[j] = solution.eq_residual;
        tensor.comp_residuals[j] = solution.comp_residual;
    }
    tensor.wall_time = start.elapsed().as_secs_f64();
    Ok(tensor)
}

/// Harmonic (lower) and arithmetic (upper) means of a two-phase mixture with
/// inclusion fraction `f` and phases `1` and `c`.
pub fn wiener_bounds(f: f64, contrast: f64) -> (f64, f64) {
    let harmonic = 1.0 / (f / contrast + (1.0 - f));
    let arithmetic = f * contrast + (1.0 - f);
    (harmonic, arithmetic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn laminate(n: usize) -> PhaseGrid {
        let mut labels = vec![0u8; n * n * n];
        for (idx, l) in labels.iter_mut().enumerate() {
            if idx % n < n / 2 {
                *l = INCLUSION;
            }
        }
        PhaseGrid::from_labels(n, labels)
    }

    #[test]
    fn reference_tensor_examples() {
        assert_eq!(reference_tensor(1.0).unwrap(), -1.0);
        assert_relative_eq!(
            reference_tensor(2048.0).unwrap(),
            -45.254833995939045,
            max_relative = 1e-15
        );
        assert_eq!(reference_tensor(1.0 / 16.0).unwrap(), -0.25);
        assert!(reference_tensor(0.0).is_err());
        assert!(reference_tensor(-2.0).is_err());
    }

    #[test]
    fn green_apply_projector_structure() {
        let xi = [1.0, -2.0, 0.5];
        let c = |x: f64| Complex64::new(x, 0.3 * x);
        // orthogonal
        let out = green_apply([c(2.0), c(1.0), c(0.0)], xi, -3.0);
        assert!(out.iter().all(|v| v.norm() < 1e-15));
        // parallel: tau / lambda0
        let out = green_apply([c(1.0), c(-2.0), c(0.5)], xi, -3.0);
        for (o, t) in out.iter().zip([c(1.0), c(-2.0), c(0.5)]) {
            assert!((o - t / -3.0).norm() < 1e-15);
        }
        // idempotent up to 1/lambda0
        let tau = [c(0.7), c(0.1), c(-1.3)];
        let once = green_apply(tau, xi, 1.0);
        let twice = green_apply(once, xi, 1.0);
        for (a, b) in once.iter().zip(&twice) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn homogeneous_medium_converges_immediately() {
        let field = ConductivityField::new(&laminate(8), 1.0).unwrap();
        let sol = accelerated_scheme(&field, [0.3, -1.0, 2.0], &SolverSettings::default()).unwrap();
        assert_eq!(sol.iterations, 1);
        assert_eq!(sol.eq_residual, 0.0);
        for (c, e) in sol.components.iter().zip([0.3, -1.0, 2.0]) {
            assert!(c.iter().all(|&v| v == e));
        }
    }

    #[test]
    fn laminate_means() {
        for c in [16.0, 2048.0, 1.0 / 16.0] {
            let field = ConductivityField::new(&laminate(8), c).unwrap();
            let settings = SolverSettings {
                acc: 1e-9,
                ..Default::default()
            };
            let t = homogenize(&field, &settings).unwrap();
            let harmonic = 2.0 * c / (1.0 + c);
            let arithmetic = (1.0 + c) / 2.0;
            assert_relative_eq!(t.matrix[0][0], harmonic, max_relative = 1e-7);
            assert_relative_eq!(t.matrix[1][1], arithmetic, max_relative = 1e-7);
            assert_relative_eq!(t.matrix[2][2], arithmetic, max_relative = 1e-7);
        }
    }

    #[test]
    fn laminate_gradient_is_piecewise_constant() {
        let n = 8;
        let c = 16.0;
        let field = ConductivityField::new(&laminate(n), c).unwrap();
        let settings = SolverSettings {
            acc: 1e-10,
            ..Default::default()
        };
        let sol = accelerated_scheme(&field, [1.0, 0.0, 0.0], &settings).unwrap();
        // flux continuity across slabs: k * g constant, mean g = 1
        let g_incl = 2.0 / (1.0 + c);
        let g_matrix = 2.0 * c / (1.0 + c);
        for (idx, g) in sol.components[0].iter().enumerate() {
            let expected = if idx % n < n / 2 { g_incl } else { g_matrix };
            assert_relative_eq!(*g, expected, max_relative = 1e-8);
        }
        let mean = sol.mean();
        assert_relative_eq!(mean[0], 1.0, max_relative = 1e-8);
    }

    #[test]
    fn rejects_bad_settings() {
        let field = ConductivityField::new(&laminate(8), 4.0).unwrap();
        let zero = accelerated_scheme(&field, [0.0; 3], &SolverSettings::default());
        assert!(matches!(zero, Err(SolverError::ZeroGradient)));
        let bad = SolverSettings {
            acc: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            accelerated_scheme(&field, [1.0, 0.0, 0.0], &bad),
            Err(SolverError::InvalidTolerance(_))
        ));
        let capped = SolverSettings {
            acc: 1e-12,
            max_iter: 2,
        };
        assert!(matches!(
            accelerated_scheme(&field, [1.0, 0.0, 0.0], &capped),
            Err(SolverError::NonConvergence { iterations: 2, .. })
        ));
        assert!(ConductivityField::new(&laminate(8), -1.0).is_err());
    }
}
