//! Plain-text matrix and occupancy-mask files.
//!
//! Matrices are whitespace-separated rows, one row per line; `#` starts a
//! comment. Masks use the format of [`VirtualLattice::mask_text`].

use std::fmt::Write as _;
use std::path::Path;

use faer::Mat;

use crate::lattice::VirtualLattice;
use crate::{Error, Result};

pub fn matrix_to_text(m: &Mat<f64>) -> String {
    let mut s = String::new();
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                s.push(' ');
            }
            // shortest round-trip representation
            write!(s, "{:?}", m[(r, c)]).unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn parse_matrix(text: &str) -> Result<Mat<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| Error::Input(format!("line {}: {t:?}: {e}", ln + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Input(format!(
                    "line {}: {} columns, expected {}",
                    ln + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    let nc = rows.first().map_or(0, Vec::len);
    Ok(Mat::from_fn(rows.len(), nc, |r, c| rows[r][c]))
}

pub fn read_matrix(path: &Path) -> Result<Mat<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    parse_matrix(&text)
}

/// Lattice with the occupancy read from a mask file.
pub fn read_mask(template: &VirtualLattice, path: &Path) -> Result<VirtualLattice> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    let occ = template.parse_mask(&text)?;
    template.clone().with_occupancy(occ)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Boundary::*;

    #[test]
    fn matrix_round_trip() {
        let m = Mat::from_fn(3, 4, |r, c| (r as f64 + 0.1) / (c as f64 + 3.0) - 1e-300);
        let back = parse_matrix(&matrix_to_text(&m)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(parse_matrix("1 2\n3\n").is_err());
        assert!(parse_matrix("1 x\n").is_err());
        let m = parse_matrix("# header\n1 2 # tail\n\n3 4\n").unwrap();
        assert_eq!(m[(1, 0)], 3.0);
    }

    #[test]
    fn mask_file() {
        let l = VirtualLattice::new(5, 4, Open, Periodic).unwrap();
        let s = l.sample_vacancies(0.5, 3);
        let dir = std::env::temp_dir().join(format!("spinflux-mask-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("mask.txt");
        std::fs::write(&p, s.mask_text()).unwrap();
        assert_eq!(read_mask(&l, &p).unwrap(), s);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
