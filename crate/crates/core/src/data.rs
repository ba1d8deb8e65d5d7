//! Observations, data sets and parameter vectors.

use serde::{Deserialize, Serialize};
use std::ops::Deref;

use crate::error::{Error, Result};

/// A parameter vector θ ∈ ℝ^q with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Theta(Vec<f64>);

impl Theta {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Contract("theta must have at least one coordinate".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain(format!("non-finite theta {coords:?}")));
        }
        Ok(Self(coords))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Theta {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Theta> for Vec<f64> {
    fn from(t: Theta) -> Self {
        t.0
    }
}

/// `n` records of equal width stored row-major.
///
/// Supervised records carry the covariates first and the response in the
/// final column; `split_index` marks where the response starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSet {
    values: Vec<f64>,
    record_width: usize,
    split_index: Option<usize>,
}

impl DataSet {
    pub fn new(values: Vec<f64>, record_width: usize, split_index: Option<usize>) -> Result<Self> {
        if record_width == 0 {
            return Err(Error::Contract("record width must be positive".into()));
        }
        if values.is_empty() {
            return Err(Error::Domain("data set must contain at least one record".into()));
        }
        if values.len() % record_width != 0 {
            return Err(Error::Contract(format!(
                "{} values do not split into records of width {record_width}",
                values.len()
            )));
        }
        if let Some(split) = split_index {
            if split >= record_width {
                return Err(Error::Contract(format!(
                    "split index {split} outside record width {record_width}"
                )));
            }
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite value in record {} column {}",
                pos / record_width,
                pos % record_width
            )));
        }
        Ok(Self { values, record_width, split_index })
    }

    /// A data set of scalar observations.
    pub fn from_scalars(values: Vec<f64>) -> Result<Self> {
        Self::new(values, 1, None)
    }

    /// Supervised pairs `(x, y)` with a scalar covariate.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        let values = pairs.iter().flat_map(|&(x, y)| [x, y]).collect();
        Self::new(values, 2, Some(1))
    }

    pub fn from_records<R: AsRef<[f64]>>(records: &[R], split_index: Option<usize>) -> Result<Self> {
        let width = records.first().map(|r| r.as_ref().len()).unwrap_or(0);
        if records.iter().any(|r| r.as_ref().len() != width) {
            return Err(Error::Contract("records have differing widths".into()));
        }
        let values = records.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::new(values, width, split_index)
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.record_width
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn record_width(&self) -> usize {
        self.record_width
    }

    pub fn split_index(&self) -> Option<usize> {
        self.split_index
    }

    pub fn record(&self, i: usize) -> &[f64] {
        &self.values[i * self.record_width..(i + 1) * self.record_width]
    }

    pub fn records(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.record_width)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// New data set made of the records at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.record_width);
        for &i in indices {
            values.extend_from_slice(self.record(i));
        }
        Self { values, record_width: self.record_width, split_index: self.split_index }
    }

    /// Concatenation of two data sets with the same layout.
    pub fn concat(&self, other: &DataSet) -> Result<Self> {
        if self.record_width != other.record_width || self.split_index != other.split_index {
            return Err(Error::Contract("cannot concatenate data sets with different layouts".into()));
        }
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Ok(Self { values, record_width: self.record_width, split_index: self.split_index })
    }

    /// Values of column `j` across records.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.records().map(|r| r[j]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_ragged_and_non_finite() {
        assert!(matches!(DataSet::new(vec![1.0, 2.0, 3.0], 2, None), Err(Error::Contract(_))));
        assert!(matches!(DataSet::new(vec![1.0, f64::NAN], 1, None), Err(Error::Domain(_))));
        assert!(matches!(DataSet::new(vec![], 1, None), Err(Error::Domain(_))));
        assert!(Theta::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn select_and_concat() {
        let d = DataSet::from_pairs(&[(1.0, 2.0), (3.0, 4.0)]).unwrap();
        assert_eq!(d.select(&[1, 1, 0]).values(), &[3.0, 4.0, 3.0, 4.0, 1.0, 2.0]);
        assert_eq!(d.concat(&d).unwrap().len(), 4);
        assert_eq!(d.column(1), vec![2.0, 4.0]);
    }
}
