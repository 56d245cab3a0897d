//! Dense complex linear-algebra helpers shared by the physics modules.
//!
//! Vectorization is column-stacking: element `(i, j)` of a `d x d` matrix sits at
//! index `j * d + i`, so that `vec(A X B) = (B^T kron A) vec(X)`.

use ndarray::{Array1, Array2, ArrayView1};
use ndarray_linalg::{Eig, Eigh, Inverse, UPLO};
use num_complex::Complex64 as C64;

use crate::error::Result;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Kronecker product `a kron b`.
pub fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for ((i, j), &x) in a.indexed_iter() {
        if x == ZERO {
            continue;
        }
        let mut block = out.slice_mut(ndarray::s![i * br..(i + 1) * br, j * bc..(j + 1) * bc]);
        block.zip_mut_with(b, |o, &y| *o = x * y);
    }
    out
}

pub fn identity(n: usize) -> Array2<C64> {
    Array2::from_diag_elem(n, ONE)
}

pub fn dagger(a: &Array2<C64>) -> Array2<C64> {
    a.t().mapv(|z| z.conj())
}

pub fn trace(a: &Array2<C64>) -> C64 {
    a.diag().sum()
}

/// Frobenius norm.
pub fn norm(a: &Array2<C64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn vec_norm(v: &Array1<C64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(a: &Array2<C64>) -> f64 {
    a.iter().fold(0.0, |m, z| m.max(z.norm()))
}

/// Column-stacking vectorization.
pub fn vectorize(a: &Array2<C64>) -> Array1<C64> {
    a.t().iter().copied().collect()
}

/// Inverse of [`vectorize`] for a square `d x d` matrix.
pub fn unvectorize(v: ArrayView1<C64>, d: usize) -> Array2<C64> {
    Array2::from_shape_fn((d, d), |(i, j)| v[j * d + i])
}

/// Bilinear (unconjugated) dot product.
pub fn dot(a: ArrayView1<C64>, b: ArrayView1<C64>) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// `Tr{A B}` without forming the product.
pub fn trace_product(a: &Array2<C64>, b: &Array2<C64>) -> C64 {
    let mut acc = ZERO;
    for ((i, j), &x) in a.indexed_iter() {
        acc += x * b[[j, i]];
    }
    acc
}

pub fn to_complex(a: &Array2<f64>) -> Array2<C64> {
    a.mapv(|x| C64::new(x, 0.0))
}

/// `f(X)` for a real symmetric `X`, through its eigendecomposition.
pub fn symmetric_function(x: &Array2<f64>, f: impl Fn(f64) -> C64) -> Result<Array2<C64>> {
    let (w, u) = x.eigh(UPLO::Lower)?;
    let n = w.len();
    let fw: Vec<C64> = w.iter().map(|&v| f(v)).collect();
    Ok(Array2::from_shape_fn((n, n), |(i, j)| {
        (0..n).map(|k| fw[k] * u[[i, k]] * u[[j, k]]).sum()
    }))
}

/// Eigenvalues with right eigenvectors (columns of `right`) and the dual left
/// eigenvectors (rows of `left = right^{-1}`), so that `left . right = 1`.
#[derive(Clone, Debug)]
pub struct EigenPairs {
    pub values: Array1<C64>,
    pub right: Array2<C64>,
    pub left: Array2<C64>,
}

impl EigenPairs {
    pub fn new(m: &Array2<C64>) -> Result<Self> {
        let (values, right) = m.eig()?;
        let left = right.inv()?;
        Ok(Self { values, right, left })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of the eigenvalue with the smallest modulus.
    pub fn smallest(&self) -> usize {
        let mut best = 0;
        for (k, v) in self.values.iter().enumerate() {
            if v.norm() < self.values[best].norm() {
                best = k;
            }
        }
        best
    }

    /// `1 / (|l_k| |r_k|)`: the overlap of normalized left and right vectors.
    pub fn overlap(&self, k: usize) -> f64 {
        let r = self.right.column(k).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let l = self.left.row(k).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        1.0 / (r * l)
    }
}
