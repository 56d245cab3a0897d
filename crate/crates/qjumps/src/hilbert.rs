//! Composite space of the three electronic levels and a truncated oscillator.
//!
//! The composite index is `level * n_fock + fock`, i.e. operators are built as
//! `atom kron fock`.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, ONE, ZERO};

/// Electronic level: ground state `g` and the two excited states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    G,
    E1,
    E2,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::G, Level::E1, Level::E2];

    pub fn index(self) -> usize {
        match self {
            Level::G => 0,
            Level::E1 => 1,
            Level::E2 => 2,
        }
    }

    /// Excited level of transition `j` (1 or 2).
    pub fn excited(j: usize) -> Level {
        match j {
            1 => Level::E1,
            _ => Level::E2,
        }
    }
}

pub const N_LEVELS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceDims {
    pub n_fock: usize,
}

impl SpaceDims {
    pub fn new(n_fock: usize) -> Result<Self> {
        if n_fock < 2 {
            return Err(Error::InvalidParameter(format!("n_fock must be >= 2, got {n_fock}")));
        }
        Ok(Self { n_fock })
    }

    pub fn dim(&self) -> usize {
        N_LEVELS * self.n_fock
    }

    pub fn index(&self, level: Level, fock: usize) -> usize {
        level.index() * self.n_fock + fock
    }
}

/// Operator on the composite space.
#[derive(Clone, Debug, PartialEq)]
pub struct QOperator {
    pub dims: SpaceDims,
    pub data: Array2<C64>,
}

impl QOperator {
    pub fn new(dims: SpaceDims, data: Array2<C64>) -> Result<Self> {
        let d = dims.dim();
        if data.dim() != (d, d) {
            return Err(Error::InvalidParameter(format!(
                "operator shape {:?} does not match composite dimension {d}",
                data.dim()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: SpaceDims) -> Self {
        let d = dims.dim();
        Self { dims, data: Array2::zeros((d, d)) }
    }

    pub fn identity(dims: SpaceDims) -> Self {
        Self { dims, data: linalg::identity(dims.dim()) }
    }

    /// `atom kron fock`.
    pub fn product(atom: &Array2<C64>, fock: &Array2<C64>) -> Self {
        let n_fock = fock.nrows();
        Self { dims: SpaceDims { n_fock }, data: linalg::kron(atom, fock) }
    }

    pub fn dagger(&self) -> Self {
        Self { dims: self.dims, data: linalg::dagger(&self.data) }
    }

    pub fn dot(&self, other: &QOperator) -> Self {
        Self { dims: self.dims, data: self.data.dot(&other.data) }
    }

    pub fn add(&self, other: &QOperator) -> Self {
        Self { dims: self.dims, data: &self.data + &other.data }
    }

    pub fn sub(&self, other: &QOperator) -> Self {
        Self { dims: self.dims, data: &self.data - &other.data }
    }

    pub fn scale(&self, c: C64) -> Self {
        Self { dims: self.dims, data: self.data.mapv(|z| z * c) }
    }

    pub fn trace(&self) -> C64 {
        linalg::trace(&self.data)
    }

    pub fn norm(&self) -> f64 {
        linalg::norm(&self.data)
    }

    /// `Tr{self * other}`.
    pub fn trace_with(&self, other: &QOperator) -> C64 {
        linalg::trace_product(&self.data, &other.data)
    }

    /// Electronic block `<i| self |j>` as an `n_fock x n_fock` matrix.
    pub fn block(&self, i: Level, j: Level) -> Array2<C64> {
        let n = self.dims.n_fock;
        let (a, b) = (i.index() * n, j.index() * n);
        self.data.slice(ndarray::s![a..a + n, b..b + n]).to_owned()
    }

    /// Partial trace over the electronic levels.
    pub fn motional(&self) -> Array2<C64> {
        let mut out = Array2::zeros((self.dims.n_fock, self.dims.n_fock));
        for l in Level::ALL {
            out += &self.block(l, l);
        }
        out
    }

    /// Partial trace over the oscillator.
    pub fn internal(&self) -> Array2<C64> {
        Array2::from_shape_fn((N_LEVELS, N_LEVELS), |(i, j)| {
            linalg::trace(&self.block(Level::ALL[i], Level::ALL[j]))
        })
    }

    pub fn hermitian_defect(&self) -> f64 {
        linalg::max_abs(&(&self.data - &linalg::dagger(&self.data)))
    }
}

/// `|i><j|` on the three-level space.
pub fn transition(i: Level, j: Level) -> Array2<C64> {
    let mut m = Array2::zeros((N_LEVELS, N_LEVELS));
    m[[i.index(), j.index()]] = ONE;
    m
}

/// Truncated annihilation operator on the oscillator alone.
pub fn fock_annihilation(n_fock: usize) -> Array2<C64> {
    Array2::from_shape_fn((n_fock, n_fock), |(i, j)| {
        if j == i + 1 {
            C64::new((j as f64).sqrt(), 0.0)
        } else {
            ZERO
        }
    })
}

/// Truncated `a + a^dagger` (real symmetric tridiagonal).
pub fn fock_position(n_fock: usize) -> Array2<f64> {
    Array2::from_shape_fn((n_fock, n_fock), |(i, j)| {
        if j == i + 1 {
            (j as f64).sqrt()
        } else if i == j + 1 {
            (i as f64).sqrt()
        } else {
            0.0
        }
    })
}

pub fn fock_number(n_fock: usize) -> Array2<C64> {
    Array2::from_shape_fn((n_fock, n_fock), |(i, j)| if i == j { C64::new(i as f64, 0.0) } else { ZERO })
}

/// `exp(sign * i * eta * (a + a^dagger))` on the oscillator alone.
pub fn fock_plane_wave(n_fock: usize, eta: f64, sign: f64) -> Array2<C64> {
    linalg::symmetric_function(&fock_position(n_fock), |x| C64::from_polar(1.0, sign * eta * x))
        .expect("symmetric eigendecomposition of the position operator")
}

/// `sin(eta * (a + a^dagger))` on the oscillator alone.
pub fn fock_standing_wave(n_fock: usize, eta: f64) -> Array2<C64> {
    linalg::symmetric_function(&fock_position(n_fock), |x| C64::new((eta * x).sin(), 0.0))
        .expect("symmetric eigendecomposition of the position operator")
}

/// `1_atom kron a`.
pub fn annihilation(dims: SpaceDims) -> QOperator {
    QOperator::product(&linalg::identity(N_LEVELS), &fock_annihilation(dims.n_fock))
}

/// `1_atom kron (a + a^dagger)`.
pub fn position(dims: SpaceDims) -> QOperator {
    QOperator::product(&linalg::identity(N_LEVELS), &linalg::to_complex(&fock_position(dims.n_fock)))
}

/// `1_atom kron a^dagger a`.
pub fn number(dims: SpaceDims) -> QOperator {
    QOperator::product(&linalg::identity(N_LEVELS), &fock_number(dims.n_fock))
}

/// `|i><j| kron 1_fock`.
pub fn atomic(dims: SpaceDims, i: Level, j: Level) -> QOperator {
    QOperator::product(&transition(i, j), &linalg::identity(dims.n_fock))
}

/// `1_atom kron exp(sign * i * eta * (a + a^dagger))`.
pub fn plane_wave(dims: SpaceDims, eta: f64, sign: f64) -> QOperator {
    QOperator::product(&linalg::identity(N_LEVELS), &fock_plane_wave(dims.n_fock, eta, sign))
}

/// `1_atom kron sin(eta * (a + a^dagger))`.
pub fn standing_wave(dims: SpaceDims, eta: f64) -> QOperator {
    QOperator::product(&linalg::identity(N_LEVELS), &fock_standing_wave(dims.n_fock, eta))
}
