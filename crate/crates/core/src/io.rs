//! JSON and CSV encodings shared by the channel, codebook and report files.
//!
//! Complex numbers are two-element arrays `[re, im]`, matrices are lists of
//! rows, and every float written to CSV uses 17 significant digits.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{CMatrix, CVector, Result, C64};

pub type ComplexPair = [f64; 2];

pub fn pair(c: C64) -> ComplexPair {
    [c.re, c.im]
}

pub fn unpair(p: ComplexPair) -> C64 {
    C64::new(p[0], p[1])
}

pub fn matrix_rows(m: &CMatrix) -> Vec<Vec<ComplexPair>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| pair(m[(i, j)])).collect())
        .collect()
}

pub fn matrix_from_rows(rows: &[Vec<ComplexPair>]) -> std::result::Result<CMatrix, String> {
    let n = rows.len();
    let c = rows.first().map(|r| r.len()).unwrap_or(0);
    if rows.iter().any(|r| r.len() != c) {
        return Err("ragged complex matrix".into());
    }
    Ok(CMatrix::from_fn(n, c, |i, j| unpair(rows[i][j])))
}

pub fn vector_entries(v: &CVector) -> Vec<ComplexPair> {
    v.iter().map(|c| pair(*c)).collect()
}

pub fn vector_from_entries(e: &[ComplexPair]) -> CVector {
    CVector::from_iterator(e.len(), e.iter().map(|p| unpair(*p)))
}

/// `#[serde(with = "io::cmatrix")]` adapter.
pub mod cmatrix {
    use super::*;

    pub fn serialize<S: Serializer>(m: &CMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
        matrix_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<CMatrix, D::Error> {
        let rows = Vec::<Vec<ComplexPair>>::deserialize(d)?;
        matrix_from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// `#[serde(with = "io::cmatrices")]` adapter for a list of matrices.
pub mod cmatrices {
    use super::*;

    pub fn serialize<S: Serializer>(m: &[CMatrix], s: S) -> std::result::Result<S::Ok, S::Error> {
        m.iter().map(matrix_rows).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Vec<CMatrix>, D::Error> {
        let all = Vec::<Vec<Vec<ComplexPair>>>::deserialize(d)?;
        all.iter()
            .map(|rows| matrix_from_rows(rows).map_err(serde::de::Error::custom))
            .collect()
    }
}

/// `#[serde(with = "io::cvectors")]` adapter for a list of vectors.
pub mod cvectors {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[CVector], s: S) -> std::result::Result<S::Ok, S::Error> {
        v.iter().map(vector_entries).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Vec<CVector>, D::Error> {
        let all = Vec::<Vec<ComplexPair>>::deserialize(d)?;
        Ok(all.iter().map(|e| vector_from_entries(e)).collect())
    }
}

/// Float formatting used by every CSV artifact (17 significant digits).
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{:.16e}", x)
    } else {
        format!("{}", x)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_carry_17_significant_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(0.0), "0.0000000000000000e0");
        let back: f64 = fmt_f64(std::f64::consts::PI).parse().unwrap();
        assert_eq!(back, std::f64::consts::PI);
    }

    #[test]
    fn ragged_rows_rejected() {
        let rows = vec![vec![[1.0, 0.0]], vec![[1.0, 0.0], [0.0, 1.0]]];
        assert!(matrix_from_rows(&rows).is_err());
    }
}
