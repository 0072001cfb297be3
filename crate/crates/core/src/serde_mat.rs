//! JSON layout for matrices and vectors in checkpoints and reports.
//!
//! A matrix is `{"rows": r, "cols": c, "data": [[...], ...]}` with `data`
//! row-major; a vector is a plain array.

use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

use crate::linalg::{Mat, Vector};

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    rows: usize,
    cols: usize,
    data: Vec<Vec<f64>>,
}

impl From<&Mat> for MatrixJson {
    fn from(m: &Mat) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }
}

pub fn serialize<S: Serializer>(m: &Mat, s: S) -> Result<S::Ok, S::Error> {
    MatrixJson::from(m).serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat, D::Error> {
    let json = MatrixJson::deserialize(d)?;
    if json.data.len() != json.rows || json.data.iter().any(|r| r.len() != json.cols) {
        return Err(D::Error::custom(format!(
            "matrix data does not match declared shape {}x{}",
            json.rows, json.cols
        )));
    }
    Ok(Mat::from_fn(json.rows, json.cols, |i, j| json.data[i][j]))
}

pub mod vector {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Vector, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector, D::Error> {
        Ok(Vector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

pub mod list {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Mat], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(MatrixJson::from).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Mat>, D::Error> {
        #[derive(Deserialize)]
        struct Wrapped(#[serde(deserialize_with = "super::deserialize")] Mat);
        Ok(Vec::<Wrapped>::deserialize(d)?.into_iter().map(|w| w.0).collect())
    }
}
