use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where a dataset came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub scenario: String,
    pub seed: u64,
    pub contamination_rate: f64,
    /// One flag per row; `true` marks a contaminant draw.
    pub contaminated: Vec<bool>,
}

/// An `n × d` sample matrix stored row-major, with an optional count response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    dim: usize,
    values: Vec<f64>,
    pub response: Option<Vec<u64>>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dataset dimension must be positive".into()));
        }
        if values.len() % dim != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} values do not form rows of width {dim}",
                values.len()
            )));
        }
        let n = values.len() / dim;
        Ok(Self {
            dim,
            values,
            response: None,
            provenance: Provenance { contaminated: vec![false; n], ..Provenance::default() },
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or_else(|| {
            Error::InvalidArgument("cannot build a dataset from zero rows".into())
        })?;
        let mut values = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: r.len() });
            }
            values.extend_from_slice(r);
        }
        Self::new(dim, values)
    }

    /// One-dimensional dataset from scalars.
    pub fn from_scalars(xs: &[f64]) -> Self {
        Self::new(1, xs.to_vec()).expect("width-1 rows always fit")
    }

    pub fn with_response(mut self, y: Vec<u64>) -> Result<Self> {
        if y.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: y.len() });
        }
        self.response = Some(y);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.dim)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Rows at `indices`, in order, carrying response and contamination flags along.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut values = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        let response = self.response.as_ref().map(|y| indices.iter().map(|&i| y[i]).collect());
        let contaminated = indices
            .iter()
            .map(|&i| self.provenance.contaminated.get(i).copied().unwrap_or(false))
            .collect();
        Dataset {
            dim: self.dim,
            values,
            response,
            provenance: Provenance { contaminated, ..self.provenance.clone() },
        }
    }

    /// Componentwise sample mean.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for r in self.rows() {
            for (a, b) in m.iter_mut().zip(r) {
                *a += b;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    }
}
