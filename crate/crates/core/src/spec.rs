//! Parameter set describing one family of random microstructures.

use serde::{Deserialize, Serialize};

use crate::error::SpecError;

/// Largest total inclusion fraction random sequential adsorption reliably reaches.
pub const RSA_FRACTION_LIMIT: f64 = 0.30;
/// Largest cylinder aspect ratio random sequential adsorption reliably handles.
pub const RSA_ASPECT_LIMIT: f64 = 16.0;
/// Documented contrast range, `2^-4 ..= 2^11`.
pub const CONTRAST_RANGE: (f64, f64) = (1.0 / 16.0, 2048.0);
pub const WAVE_RANGE: (f64, f64) = (0.0, 0.3);
pub const DEFECT_RANGE: (f64, f64) = (0.0, 0.27);

/// Full parameter set of one RVE family.
///
/// Field names in serialized form follow the usual notation (`n_sp`, `f_cyl`,
/// `a`, ...). Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MorphologySpec {
    pub n_sp: usize,
    pub n_cyl: usize,
    pub f_sp: f64,
    pub f_cyl: f64,
    /// Cylinder length over diameter.
    #[serde(rename = "a", alias = "aspect_ratio")]
    pub aspect_ratio: f64,
    /// Relative corrugation amplitude.
    pub wave: f64,
    /// Number of corrugation waves along an inclusion.
    #[serde(rename = "periods", alias = "corrugation_periods")]
    pub corrugation_periods: u32,
    pub f_def: f64,
    pub n_def: usize,
    /// Inclusion over matrix conductivity.
    pub contrast: f64,
    /// Voxels per cell edge.
    pub resolution: usize,
    pub seed: u64,
    pub runs: usize,
}

impl Default for MorphologySpec {
    fn default() -> Self {
        Self {
            n_sp: 0,
            n_cyl: 0,
            f_sp: 0.0,
            f_cyl: 0.0,
            aspect_ratio: 5.0,
            wave: 0.0,
            corrugation_periods: 3,
            f_def: 0.0,
            n_def: 30,
            contrast: 2048.0,
            resolution: 192,
            seed: 0,
            runs: 10,
        }
    }
}

fn invalid(name: &'static str, value: f64, reason: &'static str) -> SpecError {
    SpecError::Invalid {
        name,
        value,
        reason,
    }
}

impl MorphologySpec {
    /// Spheres and cylinders in equal number and fraction, the most common layout.
    pub fn mixed(n_each: usize, f_each: f64, aspect_ratio: f64, contrast: f64) -> Self {
        Self {
            n_sp: n_each,
            n_cyl: n_each,
            f_sp: f_each,
            f_cyl: f_each,
            aspect_ratio,
            contrast,
            ..Self::default()
        }
    }

    pub fn total_fraction(&self) -> f64 {
        self.f_sp + self.f_cyl
    }

    /// Hard validation. Returns the list of soft warnings (values outside the
    /// documented ranges) on success.
    pub fn validate(&self) -> Result<Vec<String>, SpecError> {
        let fraction = |name, v: f64| {
            if !(0.0..=1.0).contains(&v) {
                Err(invalid(name, v, "must lie in [0, 1]"))
            } else {
                Ok(())
            }
        };
        fraction("f_sp", self.f_sp)?;
        fraction("f_cyl", self.f_cyl)?;
        fraction("f_def", self.f_def)?;
        if self.total_fraction() > 1.0 {
            return Err(invalid("f_sp + f_cyl", self.total_fraction(), "exceeds 1"));
        }
        if (self.n_sp == 0) != (self.f_sp == 0.0) {
            return Err(invalid(
                "f_sp",
                self.f_sp,
                "spheres need both a count and a fraction",
            ));
        }
        if (self.n_cyl == 0) != (self.f_cyl == 0.0) {
            return Err(invalid(
                "f_cyl",
                self.f_cyl,
                "cylinders need both a count and a fraction",
            ));
        }
        if self.n_cyl > 0 && !(self.aspect_ratio >= 1.0 && self.aspect_ratio.is_finite()) {
            return Err(invalid("a", self.aspect_ratio, "aspect ratio must be >= 1"));
        }
        if !(self.wave >= 0.0 && self.wave < 1.0) {
            return Err(invalid("wave", self.wave, "must lie in [0, 1)"));
        }
        if self.corrugation_periods == 0 {
            return Err(invalid("periods", 0.0, "must be >= 1"));
        }
        if self.f_def > 0.0 && self.n_def == 0 {
            return Err(invalid("n_def", 0.0, "defects need a positive count"));
        }
        if !(self.contrast > 0.0 && self.contrast.is_finite()) {
            return Err(invalid("contrast", self.contrast, "must be finite and > 0"));
        }
        if self.resolution < 8 || !self.resolution.is_multiple_of(2) {
            return Err(invalid(
                "resolution",
                self.resolution as f64,
                "must be even and >= 8",
            ));
        }

        let mut warnings = Vec::new();
        if self.total_fraction() > RSA_FRACTION_LIMIT {
            warnings.push(format!(
                "total fraction {} above the RSA limit {RSA_FRACTION_LIMIT}",
                self.total_fraction()
            ));
        }
        if self.n_cyl > 0 && self.aspect_ratio > RSA_ASPECT_LIMIT {
            warnings.push(format!(
                "aspect ratio {} above the RSA limit {RSA_ASPECT_LIMIT}",
                self.aspect_ratio
            ));
        }
        if self.wave > WAVE_RANGE.1 {
            warnings.push(format!("wave {} outside [0, 0.3]", self.wave));
        }
        if self.f_def > DEFECT_RANGE.1 {
            warnings.push(format!("f_def {} outside [0, 0.27]", self.f_def));
        }
        if self.contrast < CONTRAST_RANGE.0 || self.contrast > CONTRAST_RANGE.1 {
            warnings.push(format!("contrast {} outside [2^-4, 2^11]", self.contrast));
        }
        Ok(warnings)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_when_empty() {
        let spec = MorphologySpec::default();
        assert_eq!(spec.validate().unwrap(), Vec::<String>::new());
    }

    #[test]
    fn out_of_range_values_warn() {
        let spec = MorphologySpec {
            contrast: 4096.0,
            wave: 0.5,
            ..MorphologySpec::mixed(20, 0.2, 18.0, 2048.0)
        };
        let warnings = spec.validate().unwrap();
        assert_eq!(warnings.len(), 4, "{warnings:?}");
    }

    #[test]
    fn hard_errors() {
        let bad = [
            MorphologySpec {
                resolution: 31,
                ..Default::default()
            },
            MorphologySpec {
                resolution: 6,
                ..Default::default()
            },
            MorphologySpec {
                contrast: 0.0,
                ..Default::default()
            },
            MorphologySpec {
                n_sp: 3,
                ..Default::default()
            },
            MorphologySpec {
                f_cyl: 0.1,
                ..Default::default()
            },
            MorphologySpec {
                wave: 1.0,
                ..Default::default()
            },
            MorphologySpec {
                aspect_ratio: 0.5,
                ..MorphologySpec::mixed(1, 0.1, 1.0, 2.0)
            },
            MorphologySpec {
                f_def: 0.1,
                n_def: 0,
                ..Default::default()
            },
        ];
        for spec in bad {
            assert!(spec.validate().is_err(), "{spec:?}");
        }
    }
}
