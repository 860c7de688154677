use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Location, Result};
use crate::matching::{AlignmentParams, Correspondence, MatchResult};

/// One 0-based target index per line.
pub fn correspondence_text(pi: &Correspondence) -> String {
    let mut out = String::with_capacity(pi.len() * 5);
    for t in pi.target_index() {
        writeln!(out, "{t}").expect("writing to a string");
    }
    out
}

pub fn parse_correspondence(
    text: &str,
    target_count: usize,
    path: &Path,
) -> Result<Correspondence> {
    let index = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            l.trim().parse::<usize>().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                location: Location::Line(n + 1),
                message: format!("bad index {l:?}: {e}"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Correspondence::new(index, target_count)
}

pub fn read_correspondence(path: &Path, target_count: usize) -> Result<Correspondence> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_correspondence(&text, target_count, path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Matrix {
    rows: usize,
    cols: usize,
    /// Column-major entries.
    data: Vec<f64>,
}

impl From<&DMatrix<f64>> for Matrix {
    fn from(m: &DMatrix<f64>) -> Self {
        Matrix {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.as_slice().to_vec(),
        }
    }
}

impl Matrix {
    fn into_dmatrix(self) -> Result<DMatrix<f64>> {
        if self.rows * self.cols != self.data.len() {
            return Err(Error::DimensionMismatch(format!(
                "stored {}x{} matrix has {} entries",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(DMatrix::from_vec(self.rows, self.cols, self.data))
    }
}

/// Lossless JSON form of a [`MatchResult`] (floats round-trip exactly).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MatchRecord {
    pi: Correspondence,
    registration: Matrix,
    match_loss: f64,
    per_level_energy: Vec<f64>,
    levels: Vec<usize>,
    c: Matrix,
    tau: Matrix,
}

impl From<&MatchResult> for MatchRecord {
    fn from(r: &MatchResult) -> Self {
        MatchRecord {
            pi: r.pi.clone(),
            registration: (&r.registration).into(),
            match_loss: r.match_loss,
            per_level_energy: r.per_level_energy.clone(),
            levels: r.levels.clone(),
            c: (&r.final_alignment.c).into(),
            tau: (&r.final_alignment.tau).into(),
        }
    }
}

impl MatchRecord {
    pub fn into_result(self) -> Result<MatchResult> {
        Ok(MatchResult {
            pi: self.pi,
            registration: self.registration.into_dmatrix()?,
            match_loss: self.match_loss,
            per_level_energy: self.per_level_energy,
            levels: self.levels,
            final_alignment: AlignmentParams {
                c: self.c.into_dmatrix()?,
                tau: self.tau.into_dmatrix()?,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn correspondence_file_round_trip() {
        let pi = Correspondence::new(vec![2, 0, 1, 1], 3).unwrap();
        let text = correspondence_text(&pi);
        assert_eq!(text, "2\n0\n1\n1\n");
        assert_eq!(parse_correspondence(&text, 3, Path::new("x")).unwrap(), pi);
        assert!(parse_correspondence("0\n5\n", 3, Path::new("x")).is_err());
        assert!(parse_correspondence("0\n-1\n", 3, Path::new("x")).is_err());
    }

    #[test]
    fn record_is_lossless() {
        let r = MatchResult {
            pi: Correspondence::identity(2),
            registration: DMatrix::from_fn(2, 3, |i, j| 0.1 * i as f64 + 1.0 / (j as f64 + 3.0)),
            match_loss: 0.1 + 0.2,
            per_level_energy: vec![0.1 + 0.2],
            levels: vec![6],
            final_alignment: AlignmentParams {
                c: DMatrix::from_element(1, 1, std::f64::consts::PI),
                tau: DMatrix::from_element(1, 3, -1e-300),
            },
        };
        let text = serde_json::to_string(&MatchRecord::from(&r)).unwrap();
        let back: MatchRecord = serde_json::from_str(&text).unwrap();
        assert_eq!(back.into_result().unwrap(), r);
    }
}
