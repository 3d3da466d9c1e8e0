use std::ops::Deref;

use crate::error::{Result, ZoError};

/// Dense parameter state θ ∈ ℝ^d. Entries are finite after every public
/// operation that returns `Ok`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(ZoError::Contract("parameter dimension must be >= 1".into()));
        }
        let p = Self { values };
        p.ensure_finite()?;
        Ok(p)
    }

    pub fn zeros(d: usize) -> Self {
        assert!(d >= 1, "parameter dimension must be >= 1");
        Self { values: vec![0.0; d] }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Raw mutable access. Callers must keep entries finite.
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.values
    }

    pub fn ensure_finite(&self) -> Result<()> {
        if self.values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(ZoError::NonFiniteParameters)
        }
    }

    pub fn ensure_dim(&self, d: usize) -> Result<()> {
        if self.dim() == d {
            Ok(())
        } else {
            Err(ZoError::DimensionMismatch {
                expected: d,
                actual: self.dim(),
            })
        }
    }

    /// Overwrites `self` with `other` without reallocating.
    pub fn copy_from(&mut self, other: &ParamVector) -> Result<()> {
        self.ensure_dim(other.dim())?;
        self.values.copy_from_slice(&other.values);
        Ok(())
    }

    /// Little-endian IEEE-754 bytes of every entry, in index order.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn bitwise_eq(&self, other: &ParamVector) -> bool {
        self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

impl TryFrom<Vec<f64>> for ParamVector {
    type Error = ZoError;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}
