//! Dense containers shared by every module: a channel-major 3-D tensor, a
//! single-channel real map, a binary mask and a square convolution kernel.

use crate::error::{Error, Result};

/// Real-valued `channels × height × width` array stored row-major in
/// `(c, h, w)` order.
///
/// A tensor with zero channels is permitted; it acts as the identity for
/// [`crate::ops::concat_channels`].
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    /// Builds a tensor from raw data, checking the length and finiteness.
    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Dimension(format!(
                "spatial dims must be positive, got {height}x{width}"
            )));
        }
        if data.len() != channels * height * width {
            return Err(Error::Dimension(format!(
                "data length {} does not match {channels}x{height}x{width}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite value at flat index {pos}"
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        let i = self.index(c, y, x);
        self.data[i] = v;
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Copies channel `c` out as a [`SoftMap`].
    pub fn channel_map(&self, c: usize) -> SoftMap {
        SoftMap {
            height: self.height,
            width: self.width,
            data: self.channel(c).to_vec(),
        }
    }

    /// Channels `[start, start + count)` as a new tensor.
    pub fn slice_channels(&self, start: usize, count: usize) -> Result<Tensor3> {
        if start + count > self.channels {
            return Err(Error::Dimension(format!(
                "channel slice {start}..{} out of range for {} channels",
                start + count,
                self.channels
            )));
        }
        let n = self.plane_len();
        Ok(Tensor3 {
            channels: count,
            height: self.height,
            width: self.width,
            data: self.data[start * n..(start + count) * n].to_vec(),
        })
    }

    /// Feature vector across channels at one spatial location.
    pub fn pixel_vector(&self, y: usize, x: usize) -> Vec<f64> {
        (0..self.channels).map(|c| self.get(c, y, x)).collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor3 {
        Tensor3 {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, k: f64) -> Tensor3 {
        self.map(|v| v * k)
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &Tensor3) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension(format!(
                "cannot add {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// Single-channel real map, e.g. a probability map or a soft label.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl SoftMap {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Dimension(format!(
                "map dims must be positive, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::Dimension(format!(
                "data length {} does not match {height}x{width}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite value at flat index {pos}"
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    /// Parses nested rows; all rows must share a length.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Self::from_vec(height, width, rows.concat())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> SoftMap {
        SoftMap {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination of two equally sized maps.
    pub fn zip_with(&self, other: &SoftMap, f: impl Fn(f64, f64) -> f64) -> Result<SoftMap> {
        if self.dims() != other.dims() {
            return Err(Error::Dimension(format!(
                "map dims {:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(SoftMap {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Mirror around the vertical axis.
    pub fn flip_horizontal(&self) -> SoftMap {
        SoftMap::from_fn(self.height, self.width, |y, x| {
            self.get(y, self.width - 1 - x)
        })
    }

    /// Thresholds at `>= threshold`.
    pub fn binarize(&self, threshold: f64) -> Mask {
        Mask {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .map(|&v| u8::from(v >= threshold))
                .collect(),
        }
    }

    /// Wraps the map as a one-channel tensor.
    pub fn to_tensor(&self) -> Tensor3 {
        Tensor3 {
            channels: 1,
            height: self.height,
            width: self.width,
            data: self.data.clone(),
        }
    }
}

/// Strictly binary 2-D mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl Mask {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    pub fn ones(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![1; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Dimension(format!(
                "mask dims must be positive, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::Dimension(format!(
                "data length {} does not match {height}x{width}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|&v| v > 1) {
            return Err(Error::Validation(format!(
                "mask value {} at flat index {pos} is not binary",
                data[pos]
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(u8::from(f(y, x)));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    /// Converts a real map, rejecting anything other than exact 0 or 1.
    pub fn from_soft(map: &SoftMap) -> Result<Self> {
        let mut data = Vec::with_capacity(map.len());
        for (i, &v) in map.data().iter().enumerate() {
            if v == 0.0 {
                data.push(0);
            } else if v == 1.0 {
                data.push(1);
            } else {
                return Err(Error::Validation(format!(
                    "value {v} at flat index {i} is not binary"
                )));
            }
        }
        Self::from_vec(map.height(), map.width(), data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x] == 1
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.data[y * self.width + x] = u8::from(v);
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    pub fn invert(&self) -> Mask {
        Mask {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| 1 - v).collect(),
        }
    }

    pub fn flip_horizontal(&self) -> Mask {
        Mask::from_fn(self.height, self.width, |y, x| {
            self.get(y, self.width - 1 - x)
        })
    }

    pub fn to_soft(&self) -> SoftMap {
        SoftMap {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f64::from(v)).collect(),
        }
    }
}

/// Odd-sided square convolution kernel.
///
/// Kernels built from a 1-D profile (Gaussians) remember that profile so
/// that convolution can run as two separable passes.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel2D {
    side: usize,
    weights: Vec<f64>,
    separable: Option<Vec<f64>>,
}

impl Kernel2D {
    pub fn new(side: usize, weights: Vec<f64>) -> Result<Self> {
        if side.is_multiple_of(2) {
            return Err(Error::InvalidKernel(format!("side {side} is not odd")));
        }
        if weights.len() != side * side {
            return Err(Error::InvalidKernel(format!(
                "{} weights for a {side}x{side} kernel",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidKernel("non-finite weight".into()));
        }
        Ok(Self {
            side,
            weights,
            separable: None,
        })
    }

    /// Outer product `profile ⊗ profile`.
    pub fn from_profile(profile: Vec<f64>) -> Result<Self> {
        let side = profile.len();
        let mut weights = Vec::with_capacity(side * side);
        for &a in &profile {
            for &b in &profile {
                weights.push(a * b);
            }
        }
        let mut k = Self::new(side, weights)?;
        k.separable = Some(profile);
        Ok(k)
    }

    pub fn identity() -> Self {
        Self {
            side: 1,
            weights: vec![1.0],
            separable: Some(vec![1.0]),
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn radius(&self) -> usize {
        self.side / 2
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight at offset `(dy, dx)` from the centre.
    pub fn at(&self, dy: isize, dx: isize) -> f64 {
        let r = self.radius() as isize;
        self.weights[((dy + r) * self.side as isize + (dx + r)) as usize]
    }

    pub fn profile(&self) -> Option<&[f64]> {
        self.separable.as_deref()
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}
