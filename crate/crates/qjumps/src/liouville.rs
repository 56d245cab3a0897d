//! Full master-equation Liouvillian on the composite space and the exact
//! numerical machinery built on it: steady state, biorthonormal spectral
//! decomposition, propagation and the regression-theorem spectrum.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use ndarray::{Array1, Array2};
use ndarray_linalg::{Factorize, ReciprocalConditionNum, Solve, SVD};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{self, Level, QOperator, SpaceDims, N_LEVELS};
use crate::linalg::{self, EigenPairs, I, ONE, ZERO};

/// Default Gauss-Legendre order for the emission-direction average.
pub const DEFAULT_QUAD_ORDER: usize = 8;

/// Physical parameters in units of the trap frequency.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub gamma1: f64,
    pub gamma2: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub psi: f64,
    pub n_fock: usize,
}

impl SystemParams {
    /// Reference parameter set: Doppler cooling on `g-1`, sideband cooling on the
    /// standing-wave transition `g-2`.
    pub fn reference() -> Self {
        Self {
            gamma1: 12.0,
            gamma2: 0.015,
            omega1: 2.5,
            omega2: 0.5,
            delta1: 6.0,
            delta2: 0.87,
            eta1: 0.05,
            eta2: 0.05,
            phi1: PI / 9.0,
            phi2: 0.0,
            psi: 4.0 * PI / 5.0,
            n_fock: 15,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let reals = [
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("omega1", self.omega1),
            ("omega2", self.omega2),
            ("delta1", self.delta1),
            ("delta2", self.delta2),
            ("eta1", self.eta1),
            ("eta2", self.eta2),
            ("phi1", self.phi1),
            ("phi2", self.phi2),
            ("psi", self.psi),
        ];
        for (name, v) in reals {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite")));
            }
        }
        if self.gamma1 <= 0.0 || self.gamma2 <= 0.0 {
            return Err(Error::InvalidParameter("decay rates must be positive".into()));
        }
        if self.eta1 < 0.0 || self.eta2 < 0.0 {
            return Err(Error::InvalidParameter("Lamb-Dicke parameters must be non-negative".into()));
        }
        SpaceDims::new(self.n_fock)?;
        Ok(())
    }

    pub fn dims(&self) -> SpaceDims {
        SpaceDims { n_fock: self.n_fock }
    }

    pub fn gamma(&self, j: usize) -> f64 {
        if j == 1 { self.gamma1 } else { self.gamma2 }
    }

    pub fn eta(&self, j: usize) -> f64 {
        if j == 1 { self.eta1 } else { self.eta2 }
    }

    /// Mechanical coupling of laser `j` along the trap axis, `eta_j cos(phi_j)`.
    pub fn kappa(&self, j: usize) -> f64 {
        if j == 1 { self.eta1 * self.phi1.cos() } else { self.eta2 * self.phi2.cos() }
    }

    /// Recoil of a photon emitted towards the detector on transition `j`.
    pub fn kappa_detector(&self, j: usize) -> f64 {
        self.eta(j) * self.psi.cos()
    }

    pub fn with_eta(&self, eta1: f64, eta2: f64) -> Self {
        Self { eta1, eta2, ..self.clone() }
    }

    /// Copy with one named real parameter replaced.
    pub fn with_param(&self, name: &str, value: f64) -> Result<Self> {
        let mut q = self.clone();
        let slot = match name {
            "gamma1" => &mut q.gamma1,
            "gamma2" => &mut q.gamma2,
            "omega1" => &mut q.omega1,
            "omega2" => &mut q.omega2,
            "delta1" => &mut q.delta1,
            "delta2" => &mut q.delta2,
            "eta1" => &mut q.eta1,
            "eta2" => &mut q.eta2,
            "phi1" => &mut q.phi1,
            "phi2" => &mut q.phi2,
            "psi" => &mut q.psi,
            _ => return Err(Error::InvalidParameter(format!("unknown parameter {name:?}"))),
        };
        *slot = value;
        Ok(q)
    }
}

/// Normalized dipole radiation pattern along the trap axis.
pub fn dipole_pattern(u: f64) -> f64 {
    3.0 * (1.0 + u * u) / 8.0
}

/// Gauss-Legendre nodes `u_q` with weights `w_q * dipole_pattern(u_q)`.
pub fn angular_quadrature(order: usize) -> Result<Vec<(f64, f64)>> {
    let n = NonZeroUsize::new(order)
        .filter(|n| n.get() >= 2)
        .ok_or_else(|| Error::InvalidParameter(format!("quadrature order must be >= 2, got {order}")))?;
    let rule = GaussLegendre::new(n);
    Ok(rule
        .as_node_weight_pairs()
        .iter()
        .map(|&(u, w)| (u, w * dipole_pattern(u)))
        .collect())
}

/// Second moment of the dipole pattern, `int w(u) u^2 du`.
pub fn second_moment(order: usize) -> Result<f64> {
    Ok(angular_quadrature(order)?.iter().map(|(u, w)| w * u * u).sum())
}

/// Linear map on column-stacked `d x d` operators.
#[derive(Clone, Debug)]
pub struct SuperOperator {
    pub d: usize,
    pub data: Array2<C64>,
}

impl SuperOperator {
    pub fn zeros(d: usize) -> Self {
        Self { d, data: Array2::zeros((d * d, d * d)) }
    }

    /// `X -> A X`.
    pub fn pre(a: &Array2<C64>) -> Self {
        let d = a.nrows();
        Self { d, data: linalg::kron(&linalg::identity(d), a) }
    }

    /// `X -> X B`.
    pub fn post(b: &Array2<C64>) -> Self {
        let d = b.nrows();
        Self { d, data: linalg::kron(&b.t().to_owned(), &linalg::identity(d)) }
    }

    /// `X -> A X B`.
    pub fn sandwich(a: &Array2<C64>, b: &Array2<C64>) -> Self {
        Self { d: a.nrows(), data: linalg::kron(&b.t().to_owned(), a) }
    }

    /// `X -> -i [H, X]`.
    pub fn commutator(h: &Array2<C64>) -> Self {
        let mut s = Self::pre(h);
        s.data -= &Self::post(h).data;
        s.data.mapv_inplace(|z| -I * z);
        s
    }

    pub fn add_scaled(&mut self, other: &SuperOperator, c: C64) {
        self.data.scaled_add(c, &other.data);
    }

    pub fn apply(&self, x: &Array2<C64>) -> Array2<C64> {
        let v = self.data.dot(&linalg::vectorize(x));
        linalg::unvectorize(v.view(), self.d)
    }

    pub fn norm(&self) -> f64 {
        linalg::norm(&self.data)
    }

    /// `|| 1^T L ||`: deviation from trace preservation.
    pub fn trace_defect(&self) -> f64 {
        let d = self.d;
        let mut worst: f64 = 0.0;
        for col in 0..d * d {
            let s: C64 = (0..d).map(|i| self.data[[i * d + i, col]]).sum();
            worst = worst.max(s.norm());
        }
        worst
    }
}

/// Full Hamiltonian in the frame rotating with both lasers.
pub fn build_hamiltonian(p: &SystemParams) -> QOperator {
    let dims = p.dims();
    let n = dims.n_fock;
    let ext = hilbert::fock_number(n) + &linalg::identity(n).mapv(|z| z * 0.5);
    let mut h = QOperator::product(&linalg::identity(N_LEVELS), &ext);
    let mut internal = Array2::zeros((N_LEVELS, N_LEVELS));
    internal[[1, 1]] = C64::new(p.delta1, 0.0);
    internal[[2, 2]] = C64::new(p.delta2, 0.0);
    h = h.add(&QOperator::product(&internal, &linalg::identity(n)));
    let running = QOperator::product(
        &hilbert::transition(Level::E1, Level::G).mapv(|z| z * (p.omega1 / 2.0)),
        &hilbert::fock_plane_wave(n, p.kappa(1), 1.0),
    );
    h = h.add(&running).add(&running.dagger());
    let coupling = hilbert::transition(Level::E2, Level::G) + &hilbert::transition(Level::G, Level::E2);
    let standing = QOperator::product(
        &coupling.mapv(|z| z * (p.omega2 / 2.0)),
        &hilbert::fock_standing_wave(n, p.kappa(2)),
    );
    h.add(&standing)
}

/// Spontaneous emission with recoil averaged over the dipole pattern.
pub fn build_dissipator(p: &SystemParams, quad_order: usize) -> Result<SuperOperator> {
    let nodes = angular_quadrature(quad_order)?;
    let n = p.n_fock;
    let d = N_LEVELS * n;
    let mut k = SuperOperator::zeros(d);
    for j in [1usize, 2] {
        let gamma = p.gamma(j);
        let excited = Level::excited(j);
        let lower = hilbert::transition(Level::G, excited);
        for &(u, w) in &nodes {
            let jump = linalg::kron(&lower, &hilbert::fock_plane_wave(n, p.eta(j), -u));
            k.add_scaled(&SuperOperator::sandwich(&jump, &linalg::dagger(&jump)), C64::new(gamma * w, 0.0));
        }
        let proj = linalg::kron(&hilbert::transition(excited, excited), &linalg::identity(n));
        k.add_scaled(&SuperOperator::pre(&proj), C64::new(-gamma / 2.0, 0.0));
        k.add_scaled(&SuperOperator::post(&proj), C64::new(-gamma / 2.0, 0.0));
    }
    Ok(k)
}

pub fn build_liouvillian_with(p: &SystemParams, quad_order: usize) -> Result<SuperOperator> {
    p.validate()?;
    let h = build_hamiltonian(p);
    let mut l = SuperOperator::commutator(&h.data);
    l.add_scaled(&build_dissipator(p, quad_order)?, ONE);
    Ok(l)
}

pub fn build_liouvillian(p: &SystemParams) -> Result<SuperOperator> {
    build_liouvillian_with(p, DEFAULT_QUAD_ORDER)
}

/// Reciprocal condition number below which the bordered system is singular.
const SINGULAR_RCOND: f64 = 1e-13;

/// Unique stationary state, solved with the trace condition replacing one
/// (redundant) row of `L`.
pub fn steady_state(l: &SuperOperator) -> Result<QOperator> {
    let d = l.d;
    let mut m = l.data.clone();
    for c in 0..d * d {
        m[[0, c]] = ZERO;
    }
    for i in 0..d {
        m[[0, i * d + i]] = ONE;
    }
    let lu = m.factorize()?;
    if lu.rcond()? < SINGULAR_RCOND {
        return Err(Error::NonUniqueSteadyState(null_space_dimension(l)?));
    }
    let mut rhs = Array1::zeros(d * d);
    rhs[0] = ONE;
    let x = lu.solve(&rhs)?;
    let rho = linalg::unvectorize(x.view(), d);
    let rho = (&rho + &linalg::dagger(&rho)).mapv(|z| z * 0.5);
    let tr = linalg::trace(&rho);
    let n_fock = d / N_LEVELS;
    QOperator::new(SpaceDims::new(n_fock)?, rho.mapv(|z| z / tr))
}

fn null_space_dimension(l: &SuperOperator) -> Result<usize> {
    let (_, s, _) = l.data.svd(false, false)?;
    let smax = s.iter().cloned().fold(0.0, f64::max);
    Ok(s.iter().filter(|&&x| x < 1e-10 * smax).count())
}

/// Overlap of normalized left/right vectors below which the decomposition is
/// treated as defective.
const DEFECTIVE_OVERLAP: f64 = 1e-8;

/// Biorthonormal eigen-decomposition of a Liouvillian.
///
/// Left elements are paired with right elements through the bilinear trace
/// `Tr{left_k right_l} = delta_kl`.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub d: usize,
    pub pairs: EigenPairs,
    pub stationary: usize,
}

impl SpectralDecomposition {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn eigenvalue(&self, k: usize) -> C64 {
        self.pairs.values[k]
    }

    pub fn right(&self, k: usize) -> Array2<C64> {
        linalg::unvectorize(self.pairs.right.column(k), self.d)
    }

    pub fn left(&self, k: usize) -> Array2<C64> {
        linalg::unvectorize(self.pairs.left.row(k), self.d).reversed_axes()
    }

    /// Expansion coefficients `Tr{left_k X}`.
    pub fn coefficients(&self, x: &Array2<C64>) -> Array1<C64> {
        self.pairs.left.dot(&linalg::vectorize(x))
    }

    pub fn reconstruct(&self, c: &Array1<C64>) -> Array2<C64> {
        linalg::unvectorize(self.pairs.right.dot(c).view(), self.d)
    }

    /// `exp(L t) rho0`.
    pub fn propagate(&self, rho0: &Array2<C64>, t: f64) -> Array2<C64> {
        let c = self.coefficients(rho0);
        let c = Array1::from_shape_fn(c.len(), |k| c[k] * (self.pairs.values[k] * t).exp());
        self.reconstruct(&c)
    }

    pub fn steady_state(&self) -> Array2<C64> {
        self.right(self.stationary)
    }
}

pub fn spectral_decomposition(l: &SuperOperator) -> Result<SpectralDecomposition> {
    let mut pairs = EigenPairs::new(&l.data)?;
    for k in 0..pairs.len() {
        let overlap = pairs.overlap(k);
        if overlap.is_nan() || overlap < DEFECTIVE_OVERLAP {
            return Err(Error::NearDefective { index: k, overlap });
        }
    }
    let stationary = pairs.smallest();
    let d = l.d;
    let tr: C64 = (0..d).map(|i| pairs.right[[i * d + i, stationary]]).sum();
    pairs.right.column_mut(stationary).mapv_inplace(|z| z / tr);
    pairs.left.row_mut(stationary).mapv_inplace(|z| z * tr);
    Ok(SpectralDecomposition { d, pairs, stationary })
}

/// One pole of a spectrum, `Re F / (i dw - lambda)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SpectralLine {
    pub lambda: C64,
    pub weight: C64,
}

impl SpectralLine {
    pub fn eval(&self, dw: f64) -> f64 {
        (self.weight / (C64::new(0.0, dw) - self.lambda)).re
    }
}

/// Exact two-time-correlation spectrum of a dipole operator.
#[derive(Clone, Debug, Serialize)]
pub struct CorrelationSpectrum {
    pub grid: Vec<f64>,
    pub curve: Vec<f64>,
    pub elastic_weight: f64,
    pub total_weight: C64,
    pub lines: Vec<SpectralLine>,
}

/// Regression-theorem spectrum `Re sum F(lambda)/(i dw - lambda)` with
/// `F(lambda) = Tr{D^dagger P_lambda D rho}`; the stationary pole is split off as
/// the elastic weight.
pub fn correlation_spectrum(
    decomp: &SpectralDecomposition,
    dop: &QOperator,
    rho_st: &QOperator,
    grid: &[f64],
) -> CorrelationSpectrum {
    let left_fn = linalg::vectorize(&dop.data.mapv(|z| z.conj()));
    let a = left_fn.dot(&decomp.pairs.right);
    let b = decomp.coefficients(&dop.data.dot(&rho_st.data));
    let mut lines = Vec::with_capacity(a.len());
    let mut elastic = ZERO;
    let mut total = ZERO;
    for k in 0..a.len() {
        let f = a[k] * b[k];
        total += f;
        if k == decomp.stationary {
            elastic = f;
        } else {
            lines.push(SpectralLine { lambda: decomp.eigenvalue(k), weight: f });
        }
    }
    let curve = grid.par_iter().map(|&dw| lines.iter().map(|l| l.eval(dw)).sum()).collect();
    CorrelationSpectrum { grid: grid.to_vec(), curve, elastic_weight: elastic.re, total_weight: total, lines }
}

/// Dipole operator `|g><j| exp(-i eta_j cos(psi) (a + a^dagger))`.
pub fn dipole_operator(p: &SystemParams, j: usize) -> QOperator {
    QOperator::product(
        &hilbert::transition(Level::G, Level::excited(j)),
        &hilbert::fock_plane_wave(p.n_fock, p.kappa_detector(j), -1.0),
    )
}
