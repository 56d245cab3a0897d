//! Laser-cooling rate equations in the Lamb-Dicke regime: fluctuation
//! spectra of the two transitions, heating and cooling rates, the stationary
//! phonon distribution and the Doppler and sideband limits.

use ndarray::{Array1, Array2};
use ndarray_linalg::Solve;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::{transition, Level};
use crate::internal::{internal_liouvillian, internal_steady_state};
use crate::liouville::{second_moment, SystemParams, DEFAULT_QUAD_ORDER};
use crate::linalg::{self, EigenPairs, I};

/// Distance to an internal eigenvalue below which the resolvent is singular.
pub const POLE_TOL: f64 = 1e-8;

/// Coupling `V1` of transition `j`, the coefficient of `X` in the laser term.
pub fn transition_coupling(p: &SystemParams, j: usize) -> Array2<C64> {
    if j == 1 {
        (transition(Level::E1, Level::G) - transition(Level::G, Level::E1)).mapv(|z| z * I * (p.omega1 / 2.0) * p.kappa(1))
    } else {
        (transition(Level::E2, Level::G) + transition(Level::G, Level::E2)).mapv(|z| z * (p.omega2 / 2.0) * p.kappa(2))
    }
}

/// `s_j(f) = Tr{V1 (-(L_I + i f))^{-1} V1 rho_st}`.
pub fn fluctuation_spectrum(p: &SystemParams, j: usize, freq: f64) -> Result<C64> {
    let li = internal_liouvillian(p);
    let target = C64::new(0.0, -freq);
    for lam in EigenPairs::new(&li.data)?.values.iter() {
        if (lam.re).abs() < POLE_TOL && (lam.im - target.im).abs() < POLE_TOL {
            return Err(Error::ResolventPole(freq));
        }
    }
    let v = transition_coupling(p, j);
    let rho = internal_steady_state(p).rho;
    let mut m = li.data.mapv(|z| -z);
    for k in 0..9 {
        m[[k, k]] -= I * freq;
    }
    let x = m.solve(&linalg::vectorize(&v.dot(&rho)))?;
    Ok(linalg::trace_product(&v, &linalg::unvectorize(x.view(), 3)))
}

#[derive(Clone, Debug, Serialize)]
pub struct CoolingRates {
    pub a1_plus: f64,
    pub a1_minus: f64,
    pub a2_plus: f64,
    pub a2_minus: f64,
    pub d: f64,
    pub n1: f64,
    pub n2: f64,
    pub w1: f64,
    pub w2_rate: f64,
    pub n_bar: f64,
    pub w_total: f64,
}

impl CoolingRates {
    /// Total heating rate `A+`.
    pub fn heating(&self) -> f64 {
        self.a1_plus + self.a2_plus
    }

    /// Total cooling rate `A-`.
    pub fn cooling(&self) -> f64 {
        self.a1_minus + self.a2_minus
    }
}

fn channel(j: usize, plus: f64, minus: f64) -> Result<(f64, f64)> {
    let w = minus - plus;
    if plus == 0.0 && minus == 0.0 {
        return Ok((0.0, 0.0));
    }
    if w <= 0.0 {
        return Err(Error::HeatingRegime { transition: j, rate: w });
    }
    Ok((plus / w, w))
}

pub fn cooling_rates(p: &SystemParams) -> Result<CoolingRates> {
    p.validate()?;
    let rho11 = internal_steady_state(p).rho[[1, 1]].re;
    let d = p.eta1 * p.eta1 * second_moment(DEFAULT_QUAD_ORDER)? * (p.gamma1 / 2.0) * rho11;
    let a1_plus = 2.0 * (fluctuation_spectrum(p, 1, -1.0)?.re + d);
    let a1_minus = 2.0 * (fluctuation_spectrum(p, 1, 1.0)?.re + d);
    let a2_plus = 2.0 * fluctuation_spectrum(p, 2, -1.0)?.re;
    let a2_minus = 2.0 * fluctuation_spectrum(p, 2, 1.0)?.re;
    let (n1, w1) = channel(1, a1_plus, a1_minus)?;
    let (n2, w2_rate) = channel(2, a2_plus, a2_minus)?;
    let w_total = w1 + w2_rate;
    if w_total <= 0.0 {
        return Err(Error::HeatingRegime { transition: 1, rate: w1 });
    }
    let n_bar = (n1 * w1 + n2 * w2_rate) / w_total;
    Ok(CoolingRates { a1_plus, a1_minus, a2_plus, a2_minus, d, n1, n2, w1, w2_rate, n_bar, w_total })
}

/// Doppler-cooling estimate `(n1, W1)` for `delta1 = gamma1 / 2`.
pub fn doppler_limit(p: &SystemParams) -> Result<(f64, f64)> {
    let w2 = second_moment(DEFAULT_QUAD_ORDER)?;
    let c2 = p.phi1.cos().powi(2);
    let n1 = (p.gamma1 / 4.0) * (1.0 + w2 / c2) - 0.5;
    let w1 = 2.0 * p.eta1 * p.eta1 * p.omega1 * p.omega1 * c2 / (p.gamma1 * p.gamma1);
    Ok((n1, w1))
}

/// Light-shift broadening of the ground state, `Omega1^2 / (2 gamma1)`.
pub fn ground_state_width(p: &SystemParams) -> f64 {
    p.omega1 * p.omega1 / (2.0 * p.gamma1)
}

/// Sideband-cooling estimate `(n2, W2)` including the ground-state width.
pub fn sideband_limit(p: &SystemParams) -> (f64, f64) {
    let width = p.gamma2 + ground_state_width(p);
    let n2 = width * width / 16.0;
    let w2 = p.eta2 * p.eta2 * p.omega2 * p.omega2 * p.phi2.cos().powi(2) / width;
    (n2, w2)
}

/// Geometric phonon distribution with mean `n_bar`, renormalized on the
/// truncated space.
pub fn thermal_distribution(n_bar: f64, n_fock: usize) -> Vec<f64> {
    let q = n_bar / (1.0 + n_bar);
    let raw: Vec<f64> = (0..n_fock).map(|n| q.powi(n as i32)).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / z).collect()
}

/// Thermal motional density matrix on the oscillator alone.
pub fn thermal_state(n_bar: f64, n_fock: usize) -> Array2<C64> {
    let p = thermal_distribution(n_bar, n_fock);
    Array2::from_diag(&Array1::from_iter(p.into_iter().map(|x| C64::new(x, 0.0))))
}

/// Stationary solution of the phonon rate equation with summed channel rates.
pub fn rate_equation_distribution(rates: &CoolingRates, n_fock: usize) -> Vec<f64> {
    let ratio = rates.heating() / rates.cooling();
    let mut p = vec![1.0; n_fock];
    for n in 1..n_fock {
        p[n] = p[n - 1] * ratio;
    }
    let z: f64 = p.iter().sum();
    p.into_iter().map(|x| x / z).collect()
}

pub fn mean(dist: &[f64]) -> f64 {
    dist.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanRow {
    pub value: f64,
    pub n1: f64,
    pub n2: f64,
    pub n_bar: f64,
    pub error: Option<String>,
}

/// Mean phonon numbers along a scan of one parameter; failing rows are flagged.
pub fn scan_mean_phonon(p: &SystemParams, param: &str, values: &[f64]) -> Result<Vec<ScanRow>> {
    p.with_param(param, p.gamma1)?;
    Ok(values
        .par_iter()
        .map(|&value| {
            let row = p.with_param(param, value).and_then(|q| cooling_rates(&q));
            match row {
                Ok(r) => ScanRow { value, n1: r.n1, n2: r.n2, n_bar: r.n_bar, error: None },
                Err(e) => ScanRow { value, n1: f64::NAN, n2: f64::NAN, n_bar: f64::NAN, error: Some(e.to_string()) },
            }
        })
        .collect())
}
