//! Dense row-major tensors and the small matrix kernels the convolutions are
//! written in terms of.

mod io;

pub use io::{decode, encode, read_tensor, write_tensor, MAGIC};

use crate::error::{Error, Result};

/// Dense array of `f64` in row-major order, rank 1 to 4.
///
/// Rank-4 tensors use the `(batch, channel, row, col)` layout throughout the
/// crate.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

pub const MAX_RANK: usize = 4;

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.len() > MAX_RANK {
            return Err(Error::shape(format!("rank {} outside 1..=4", dims.len())));
        }
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::shape(format!(
                "dims {:?} hold {} values, got {}",
                dims,
                n,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invariant(format!("non-finite entry at flat index {pos}")));
        }
        Ok(Tensor { dims, data })
    }

    /// Size-checked constructor for kernel outputs; finiteness is left to the
    /// caller (overflow during a diverging run must surface as a loss check,
    /// not a panic).
    pub(crate) fn from_raw(dims: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(dims.iter().product::<usize>(), data.len(), "dims {dims:?}");
        Tensor { dims, data }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        assert!(!dims.is_empty() && dims.len() <= MAX_RANK, "rank outside 1..=4");
        let n = dims.iter().product();
        Tensor {
            dims: dims.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(dims: &[usize], value: f64) -> Self {
        let mut t = Self::zeros(dims);
        t.data.fill(value);
        t
    }

    /// Builds a tensor by evaluating `f` at every flat index.
    pub fn from_fn(dims: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let mut t = Self::zeros(dims);
        for (i, v) in t.data.iter_mut().enumerate() {
            *v = f(i);
        }
        t
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
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

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.dims == other.dims
    }

    /// Extents of a rank-4 tensor, or a shape error naming `what`.
    pub fn dims4(&self, what: &str) -> Result<[usize; 4]> {
        match self.dims[..] {
            [b, c, r, w] => Ok([b, c, r, w]),
            _ => Err(Error::shape(format!(
                "{what}: expected rank-4 (batch, channel, row, col), got {:?}",
                self.dims
            ))),
        }
    }

    pub fn get2(&self, i: usize, j: usize) -> f64 {
        debug_assert_eq!(self.rank(), 2);
        self.data[i * self.dims[1] + j]
    }

    pub fn get4(&self, b: usize, c: usize, i: usize, j: usize) -> f64 {
        let d = &self.dims;
        self.data[((b * d[1] + c) * d[2] + i) * d[3] + j]
    }

    pub fn set4(&mut self, b: usize, c: usize, i: usize, j: usize, v: f64) {
        let d = &self.dims;
        let idx = ((b * d[1] + c) * d[2] + i) * d[3] + j;
        self.data[idx] = v;
    }

    pub fn reshape(mut self, dims: &[usize]) -> Result<Self> {
        if dims.is_empty() || dims.len() > MAX_RANK || dims.iter().product::<usize>() != self.len() {
            return Err(Error::shape(format!("cannot reshape {:?} into {:?}", self.dims, dims)));
        }
        self.dims = dims.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, k: f64) -> Tensor {
        self.map(|v| v * k)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copies items `[start, end)` along the leading axis.
    pub fn slice_outer(&self, start: usize, end: usize) -> Tensor {
        assert!(start <= end && end <= self.dims[0]);
        let stride: usize = self.dims[1..].iter().product();
        let mut dims = self.dims.clone();
        dims[0] = end - start;
        Tensor {
            dims,
            data: self.data[start * stride..end * stride].to_vec(),
        }
    }

    /// Gathers items along the leading axis in the order given by `idx`.
    pub fn gather_outer(&self, idx: &[usize]) -> Tensor {
        let stride: usize = self.dims[1..].iter().product();
        let mut data = Vec::with_capacity(idx.len() * stride);
        for &i in idx {
            data.extend_from_slice(&self.data[i * stride..(i + 1) * stride]);
        }
        let mut dims = self.dims.clone();
        dims[0] = idx.len();
        Tensor { dims, data }
    }
}

fn check_same(a: &Tensor, b: &Tensor, op: &str) -> Result<()> {
    if a.dims != b.dims {
        return Err(Error::shape(format!("{op}: {:?} vs {:?}", a.dims, b.dims)));
    }
    Ok(())
}

/// Sum of elementwise products of two equal-shape arrays.
pub fn frobenius_inner(a: &Tensor, b: &Tensor) -> Result<f64> {
    check_same(a, b, "frobenius_inner")?;
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum())
}

/// Elementwise product.
pub fn hadamard(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    check_same(a, b, "hadamard")?;
    Ok(Tensor {
        dims: a.dims.clone(),
        data: a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect(),
    })
}

/// `K x K` window of an image centred on one pixel, zero outside the image.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhood {
    pub center: (usize, usize),
    pub patch: Tensor,
}

pub fn neighborhood(image: &Tensor, i: usize, j: usize, k: usize) -> Result<Neighborhood> {
    if image.rank() != 2 {
        return Err(Error::shape(format!("neighborhood needs a matrix, got {:?}", image.dims)));
    }
    if k % 2 == 0 {
        return Err(Error::param(format!("kernel extent must be odd, got {k}")));
    }
    let (rows, cols) = (image.dims[0], image.dims[1]);
    if i >= rows || j >= cols {
        return Err(Error::Index(format!("center ({i}, {j}) outside {rows}x{cols} image")));
    }
    let half = (k / 2) as isize;
    let patch = Tensor::from_fn(&[k, k], |flat| {
        let r = i as isize + (flat / k) as isize - half;
        let c = j as isize + (flat % k) as isize - half;
        if r < 0 || c < 0 || r >= rows as isize || c >= cols as isize {
            0.0
        } else {
            image.get2(r as usize, c as usize)
        }
    });
    Ok(Neighborhood { center: (i, j), patch })
}
