use alloc::vec;
use alloc::vec::Vec;

use crate::error::{config_err, input_err, Error, Result};

/// Row-major `channels × length` grid of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2 {
    channels: usize,
    length: usize,
    data: Vec<f64>,
}

impl Tensor2 {
    /// Wraps `data`, rejecting size mismatches and non-finite values.
    pub fn new(channels: usize, length: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || length == 0 {
            return Err(config_err!("tensor dimensions must be positive, got {channels}x{length}"));
        }
        if data.len() != channels * length {
            return Err(config_err!(
                "tensor data has {} values, expected {channels}x{length}",
                data.len()
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(input_err!("non-finite value at flat index {pos}"));
        }
        Ok(Self { channels, length, data })
    }

    pub fn zeros(channels: usize, length: usize) -> Self {
        assert!(channels > 0 && length > 0, "tensor dimensions must be positive");
        Self { channels, length, data: vec![0.0; channels * length] }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let length = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != length) {
            return Err(config_err!("ragged rows"));
        }
        Self::new(rows.len(), length, rows.iter().flat_map(|r| r.iter().copied()).collect())
    }

    /// Single-channel tensor.
    pub fn row_vector(values: &[f64]) -> Result<Self> {
        Self::new(1, values.len(), values.to_vec())
    }

    pub fn scalar(value: f64) -> Self {
        Self { channels: 1, length: 1, data: vec![value] }
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn length(&self) -> usize {
        self.length
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, channel: usize, t: usize) -> f64 {
        self.data[channel * self.length + t]
    }

    #[inline]
    pub fn set(&mut self, channel: usize, t: usize, value: f64) {
        self.data[channel * self.length + t] = value;
    }

    #[inline]
    pub fn row(&self, channel: usize) -> &[f64] {
        &self.data[channel * self.length..(channel + 1) * self.length]
    }

    #[inline]
    pub fn row_mut(&mut self, channel: usize) -> &mut [f64] {
        &mut self.data[channel * self.length..(channel + 1) * self.length]
    }

    pub fn same_shape(&self, other: &Tensor2) -> bool {
        self.channels == other.channels && self.length == other.length
    }

    /// Adds `other` elementwise into `self`.
    pub(crate) fn accumulate(&mut self, other: &Tensor2) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub(crate) fn ensure_finite(self, what: &str) -> Result<Self> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(self)
        } else {
            Err(Error::Numeric(alloc::format!("{what} produced a non-finite value")))
        }
    }
}
