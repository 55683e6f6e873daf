//! Dense row-major tensors and the few linear-algebra kernels the network
//! needs. Everything is double precision so finite-difference checks stay
//! tight.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense row-major tensor of `f64` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            values: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_values(shape: &[usize], values: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if values.len() != expected {
            return Err(Error::shape("tensor construction", shape, &[values.len()]));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            values,
        })
    }

    /// Uniform Xavier/Glorot initialization over (fan_in, fan_out).
    pub fn xavier(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let values = (0..shape.iter().product())
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Tensor {
            shape: shape.to_vec(),
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Rows of a 2-D tensor.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Columns of a 2-D tensor.
    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn is_matrix(&self) -> bool {
        self.shape.len() == 2
    }

    pub fn at2(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.shape[1] + j]
    }

    pub fn set2(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.shape[1] + j] = v;
    }

    /// Reinterpret as a new shape with the same element count.
    pub fn reshaped(&self, shape: &[usize]) -> Result<Tensor> {
        if shape.iter().product::<usize>() != self.len() {
            return Err(Error::shape("reshape", shape, &self.shape));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            values: self.values.clone(),
        })
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Frobenius-style sum of squares, used by loss reporting and tests.
    pub fn sum_squares(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

fn expect_matrix(t: &Tensor, context: &str) -> Result<()> {
    if !t.is_matrix() {
        return Err(Error::shape(context, &[0, 0], &t.shape));
    }
    Ok(())
}

/// C = A B with optional transposes, via the packed dgemm kernel.
fn gemm(a: &Tensor, ta: bool, b: &Tensor, tb: bool, context: &str) -> Result<Tensor> {
    expect_matrix(a, context)?;
    expect_matrix(b, context)?;
    let (m, ka) = if ta {
        (a.cols(), a.rows())
    } else {
        (a.rows(), a.cols())
    };
    let (kb, n) = if tb {
        (b.cols(), b.rows())
    } else {
        (b.rows(), b.cols())
    };
    if ka != kb {
        return Err(Error::shape(context, &[m, ka], &[kb, n]));
    }
    let mut c = Tensor::zeros(&[m, n]);
    // Row-major strides; a transpose swaps the row/column strides.
    let (rsa, csa) = if ta {
        (1isize, a.cols() as isize)
    } else {
        (a.cols() as isize, 1isize)
    };
    let (rsb, csb) = if tb {
        (1isize, b.cols() as isize)
    } else {
        (b.cols() as isize, 1isize)
    };
    unsafe {
        matrixmultiply::dgemm(
            m,
            ka,
            n,
            1.0,
            a.values.as_ptr(),
            rsa,
            csa,
            b.values.as_ptr(),
            rsb,
            csb,
            0.0,
            c.values.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    Ok(c)
}

/// (m x k)(k x n) -> m x n.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    gemm(a, false, b, false, "matmul")
}

/// A^T B: (k x m)^T (k x n) -> m x n.
pub fn matmul_tn(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    gemm(a, true, b, false, "matmul_tn")
}

/// A B^T: (m x k)(n x k)^T -> m x n.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    gemm(a, false, b, true, "matmul_nt")
}
