//! Binary phase-grid files.
//!
//! Layout: 16-byte little-endian header (`b"RVEG"`, version `u32`, resolution
//! `u32`, phase count `u32`) followed by `N^3` label bytes, x fastest.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::GridFormatError;
use crate::morphology::PhaseGrid;

pub const MAGIC: [u8; 4] = *b"RVEG";
pub const VERSION: u32 = 1;
pub const PHASE_COUNT: u32 = 2;
pub const HEADER_LEN: usize = 16;

pub fn encode_grid(grid: &PhaseGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + grid.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(grid.resolution() as u32).to_le_bytes());
    out.extend_from_slice(&PHASE_COUNT.to_le_bytes());
    out.extend_from_slice(grid.labels());
    out
}

pub fn decode_grid(bytes: &[u8]) -> Result<PhaseGrid, GridFormatError> {
    if bytes.len() < HEADER_LEN {
        return Err(GridFormatError::Truncated {
            expected: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(GridFormatError::BadMagic(magic));
    }
    let version = word(4);
    if version != VERSION {
        return Err(GridFormatError::UnsupportedVersion(version));
    }
    let n = word(8);
    if n == 0 || n > 4096 {
        return Err(GridFormatError::InvalidResolution(n));
    }
    let phases = word(12);
    if phases != PHASE_COUNT {
        return Err(GridFormatError::UnsupportedPhaseCount(phases));
    }
    let expected = HEADER_LEN as u64 + (n as u64).pow(3);
    if bytes.len() as u64 != expected {
        return Err(GridFormatError::Truncated {
            expected,
            found: bytes.len() as u64,
        });
    }
    let labels = bytes[HEADER_LEN..].to_vec();
    if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l as u32 >= phases) {
        return Err(GridFormatError::BadLabel { index, label });
    }
    Ok(PhaseGrid::from_labels(n as usize, labels))
}

pub fn export_grid(grid: &PhaseGrid, path: &Path) -> Result<(), GridFormatError> {
    let mut file = fs::File::create(path)?;
    file.write_all(&encode_grid(grid))?;
    Ok(())
}

pub fn import_grid(path: &Path) -> Result<PhaseGrid, GridFormatError> {
    decode_grid(&fs::read(path)?)
}

/// CSV sidecar with the measured phase fractions.
pub fn fractions_csv(grid: &PhaseGrid) -> String {
    let [matrix, inclusion] = grid.voxel_fractions();
    format!(
        "resolution,matrix_fraction,inclusion_fraction,defect_fraction\n{},{},{},{}\n",
        grid.resolution(),
        matrix,
        inclusion,
        grid.defect_fraction_measured
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip(n in 1usize..12, seed in any::<u64>()) {
            let labels: Vec<u8> = (0..n.pow(3))
                .map(|i| ((seed.wrapping_mul(i as u64 + 1) >> 17) & 1) as u8)
                .collect();
            let grid = PhaseGrid::from_labels(n, labels);
            prop_assert_eq!(decode_grid(&encode_grid(&grid)).unwrap(), grid);
        }
    }

    #[test]
    fn format_errors() {
        let grid = PhaseGrid::filled(8, 1);
        let mut bytes = encode_grid(&grid);
        assert_eq!(bytes.len(), 16 + 512);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            decode_grid(&bad),
            Err(GridFormatError::BadMagic(_))
        ));

        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(
            decode_grid(&bad),
            Err(GridFormatError::UnsupportedVersion(9))
        ));

        assert!(matches!(
            decode_grid(&bytes[..100]),
            Err(GridFormatError::Truncated {
                expected: 528,
                found: 100
            })
        ));
        assert!(matches!(
            decode_grid(&bytes[..10]),
            Err(GridFormatError::Truncated { .. })
        ));

        bytes[HEADER_LEN + 3] = 7;
        assert!(matches!(
            decode_grid(&bytes),
            Err(GridFormatError::BadLabel { index: 3, label: 7 })
        ));
    }

    #[test]
    fn file_size_matches_resolution() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.rveg");
        let grid = PhaseGrid::filled(192, 0);
        export_grid(&grid, &path).unwrap();
        assert_eq!(fs::metadata(&path).unwrap().len(), 16 + 192u64.pow(3));
        assert_eq!(import_grid(&path).unwrap(), grid);
    }
}
