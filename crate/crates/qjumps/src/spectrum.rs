//! Perturbative resonance-fluorescence spectra and the closed-form signals of
//! the central peak and the transition-2 sidebands.
//!
//! A spectrum is a sum of poles `Re F / (i dw - lambda)` with `dw` the
//! detuning from the laser driving the observed transition. The weights are
//!
//! `F0 = Tr{D0' P0 D0 rho0}`,
//! `F2 = sum_{a+b+c+d=2} Tr{Da' Pb Dc rho_d}`,
//!
//! with `Dn` the Lamb-Dicke coefficients of the dipole operator, `Pb` the
//! corrections of the spectral projector and `rho_d` those of the steady
//! state. The ten second-order combinations are
//!
//! | (a,b,c,d) | dominant role |
//! |-----------|---------------|
//! | (0,2,0,0) | central peak of transition 1 (shelving, `~1/gamma2`) |
//! | (0,1,0,1) | motional sidebands, central peak subleading term |
//! | (0,0,0,2) | inelastic pedestal of transition 2 (`~1/gamma2`) |
//! | (0,1,1,0), (1,1,0,0) | recoil on the sidebands of transition 1 |
//! | (1,0,1,0) | recoil-broadened copy of the zero-order spectrum |
//! | (2,0,0,0), (0,0,2,0) | Debye-Waller reduction |
//! | (1,0,0,1), (0,0,1,1) | interference of recoil and motion |
//!
//! For transition 2 every term containing `D rho0` vanishes.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::cooling::cooling_rates;
use crate::error::{Error, Result};
use crate::hilbert::{self, transition, Level, QOperator};
use crate::internal::{dressed_states, internal_eigensystem, internal_steady_state, saturation, InternalMode};
use crate::lamb_dicke::{MotionalState, PerturbationTheory, PerturbativeMode};
use crate::liouville::{SpectralLine, SystemParams};
use crate::linalg::{self, I, ZERO};

/// `D = |g><j| exp(-i kappa X)` with `kappa = eta_j cos(psi)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DipoleOperator {
    pub transition: usize,
    pub psi: f64,
    pub kappa: f64,
}

impl DipoleOperator {
    pub fn new(p: &SystemParams, j: usize) -> Self {
        Self::at_angle(p, j, p.psi)
    }

    pub fn at_angle(p: &SystemParams, j: usize, psi: f64) -> Self {
        Self { transition: j, psi, kappa: p.eta(j) * psi.cos() }
    }

    /// `|g><j|`.
    pub fn atomic(&self) -> Array2<C64> {
        transition(Level::G, Level::excited(self.transition))
    }

    /// Motional factor of `D_n`: `1`, `-i kappa X`, `-kappa^2 X^2 / 2`.
    pub fn coefficient(&self, order: usize, n_fock: usize) -> Array2<C64> {
        let x = linalg::to_complex(&hilbert::fock_position(n_fock));
        match order {
            0 => linalg::identity(n_fock),
            1 => x.mapv(|z| -I * self.kappa * z),
            2 => x.dot(&x).mapv(|z| z * (-self.kappa * self.kappa / 2.0)),
            _ => Array2::zeros((n_fock, n_fock)),
        }
    }

    pub fn full(&self, n_fock: usize) -> QOperator {
        QOperator::product(&self.atomic(), &hilbert::fock_plane_wave(n_fock, self.kappa, -1.0))
    }
}

/// Which eigenvalue each perturbative line is placed at.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoleOrder {
    /// `lambda0` for decaying zero-order subspaces, `lambda0 + mu` only where
    /// `Re lambda0 = 0`.
    #[default]
    Lowest,
    /// `lambda0 + mu` everywhere.
    SecondOrder,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Elastic,
    ElasticCorrection,
    SidebandRed,
    SidebandBlue,
    InelasticZero,
    InelasticSecond,
}

impl Component {
    pub const PLOTTED: [Component; 5] = [
        Component::ElasticCorrection,
        Component::SidebandRed,
        Component::SidebandBlue,
        Component::InelasticZero,
        Component::InelasticSecond,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Component::Elastic => "elastic",
            Component::ElasticCorrection => "elastic_correction",
            Component::SidebandRed => "sb_red",
            Component::SidebandBlue => "sb_blue",
            Component::InelasticZero => "inel_0",
            Component::InelasticSecond => "inel_2",
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LabeledLine {
    pub component: Component,
    /// Zero-order subspace `(internal mode, phonon offset)`.
    pub group: (usize, i64),
    pub line: SpectralLine,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SpectrumComponents {
    pub elastic_correction: Vec<f64>,
    pub sideband_red: Vec<f64>,
    pub sideband_blue: Vec<f64>,
    pub inelastic_zero: Vec<f64>,
    pub inelastic_second: Vec<f64>,
}

impl SpectrumComponents {
    pub fn get(&self, c: Component) -> Option<&[f64]> {
        match c {
            Component::ElasticCorrection => Some(&self.elastic_correction),
            Component::SidebandRed => Some(&self.sideband_red),
            Component::SidebandBlue => Some(&self.sideband_blue),
            Component::InelasticZero => Some(&self.inelastic_zero),
            Component::InelasticSecond => Some(&self.inelastic_second),
            Component::Elastic => None,
        }
    }

    fn get_mut(&mut self, c: Component) -> Option<&mut Vec<f64>> {
        match c {
            Component::ElasticCorrection => Some(&mut self.elastic_correction),
            Component::SidebandRed => Some(&mut self.sideband_red),
            Component::SidebandBlue => Some(&mut self.sideband_blue),
            Component::InelasticZero => Some(&mut self.inelastic_zero),
            Component::InelasticSecond => Some(&mut self.inelastic_second),
            Component::Elastic => None,
        }
    }
}

/// Inelastic curve on a detuning grid plus the elastic weight; `total` is the
/// sum of the plotted components.
#[derive(Clone, Debug, Serialize)]
pub struct SpectrumResult {
    pub transition: usize,
    pub order: usize,
    pub grid: Vec<f64>,
    pub total: Vec<f64>,
    pub elastic_weight: f64,
    pub components: SpectrumComponents,
    pub lines: Vec<LabeledLine>,
}

impl SpectrumResult {
    fn assemble(transition: usize, order: usize, grid: &[f64], lines: Vec<LabeledLine>) -> Self {
        let n = grid.len();
        let mut components = SpectrumComponents {
            elastic_correction: vec![0.0; n],
            sideband_red: vec![0.0; n],
            sideband_blue: vec![0.0; n],
            inelastic_zero: vec![0.0; n],
            inelastic_second: vec![0.0; n],
        };
        let mut elastic_weight = 0.0;
        for c in Component::PLOTTED {
            let selected: Vec<&SpectralLine> =
                lines.iter().filter(|l| l.component == c && l.line.weight != ZERO).map(|l| &l.line).collect();
            let curve: Vec<f64> = grid.par_iter().map(|&dw| selected.iter().map(|l| l.eval(dw)).sum()).collect();
            if let Some(slot) = components.get_mut(c) {
                *slot = curve;
            }
        }
        for l in lines.iter().filter(|l| l.component == Component::Elastic) {
            elastic_weight += l.line.weight.re;
        }
        let total = (0..n)
            .map(|i| Component::PLOTTED.iter().map(|&c| components.get(c).map_or(0.0, |v| v[i])).sum())
            .collect();
        Self { transition, order, grid: grid.to_vec(), total, elastic_weight, components, lines }
    }

    /// `sum Re F` over the lines of one component.
    pub fn weight(&self, c: Component) -> f64 {
        self.lines.iter().filter(|l| l.component == c).map(|l| l.line.weight.re).sum()
    }

    /// `sum Re F` over the lines of one zero-order subspace.
    pub fn group_weight(&self, group: (usize, i64)) -> f64 {
        self.lines.iter().filter(|l| l.group == group).map(|l| l.line.weight.re).sum()
    }

    /// Total weight of all lines except the elastic one.
    pub fn inelastic_weight(&self) -> f64 {
        self.lines.iter().filter(|l| l.component != Component::Elastic).map(|l| l.line.weight.re).sum()
    }

    /// Curve of the lines in one zero-order subspace.
    pub fn group_curve(&self, group: (usize, i64)) -> Vec<f64> {
        let sel: Vec<&SpectralLine> = self.lines.iter().filter(|l| l.group == group).map(|l| &l.line).collect();
        self.grid.iter().map(|&dw| sel.iter().map(|l| l.eval(dw)).sum()).collect()
    }
}

/// `S0 = Re sum_k F0(k) / (i dw - lambda_k)` of the atom at rest.
pub fn zero_order_spectrum(p: &SystemParams, j: usize, grid: &[f64]) -> Result<SpectrumResult> {
    let es = internal_eigensystem(p)?;
    let a = DipoleOperator::new(p, j).atomic();
    let arho = a.dot(&es.steady.rho);
    let lines = (0..9)
        .map(|k| {
            let weight = es.right[k][[0, j]] * linalg::trace_product(&es.left[k], &arho);
            LabeledLine {
                component: if k == InternalMode::Stationary.index() { Component::Elastic } else { Component::InelasticZero },
                group: (k, 0),
                line: SpectralLine { lambda: es.values[k], weight },
            }
        })
        .collect();
    Ok(SpectrumResult::assemble(j, 0, grid, lines))
}

struct Functionals {
    /// `u[a]` with `u[a] . X = Tr{Da' X}`.
    u: [Array1<C64>; 3],
    /// `v[(c, d)]` = coordinates of `Dc rho_d`.
    v: Vec<((usize, usize), Array1<C64>)>,
}

impl Functionals {
    /// Visits every second-order trace `Tr{Da' Pb Dc rho_d}` of one mode
    /// keyed by `[a, b, c, d]`; returns the zero-order weight.
    fn traces(&self, m: &PerturbativeMode, mut visit: impl FnMut([usize; 4], C64)) -> C64 {
        let ur = |a: usize, i: usize| linalg::dot(self.u[a].view(), m.right[i].view());
        let mut f0 = ZERO;
        for ((c, dd), v) in &self.v {
            for jj in 0..3 - c - dd {
                let lv = linalg::dot(m.left[jj].view(), v.view());
                let rest = 2 - jj - c - dd;
                for a in 0..=rest {
                    visit([a, rest - a + jj, *c, *dd], ur(a, rest - a) * lv);
                }
                if rest == 2 {
                    f0 = ur(0, 0) * lv;
                }
            }
        }
        visit([0, 2, 0, 0], -f0 * m.n2);
        f0
    }
}

/// Perturbation theory and steady-state expansion shared by spectra of
/// different transitions and detector angles.
pub struct SpectralEngine {
    pub theory: PerturbationTheory,
    pub rho: [Array1<C64>; 3],
}

impl SpectralEngine {
    pub fn new(p: &SystemParams, start: MotionalState) -> Result<Self> {
        let theory = PerturbationTheory::new(p)?;
        let rho = theory.steady_state_expansion(start)?;
        Ok(Self { theory, rho })
    }

    fn functionals(&self, d: &DipoleOperator) -> Functionals {
        let basis = &self.theory.basis;
        let nf = basis.n_fock;
        let es = &basis.internal;
        let a = d.atomic();
        let e: Vec<Array2<C64>> = (0..3).map(|o| d.coefficient(o, nf)).collect();
        let u = std::array::from_fn(|o| {
            let ed = &e[o];
            let mut out = Array1::zeros(basis.len());
            for k in 0..9 {
                let tr = es.right[k][[0, d.transition]];
                if tr == ZERO {
                    continue;
                }
                for n in 0..nf {
                    for m in 0..nf {
                        out[basis.index(k, n, m)] = tr * ed[[n, m]].conj();
                    }
                }
            }
            out
        });
        let rho_ops: Vec<Array2<C64>> = self.rho.iter().map(|r| basis.to_operator(r)).collect();
        let mut v = Vec::new();
        for (c, ec) in e.iter().enumerate() {
            let full = linalg::kron(&a, ec);
            for (dd, r) in rho_ops.iter().enumerate().take(3 - c) {
                v.push(((c, dd), basis.to_basis(&full.dot(r))));
            }
        }
        Functionals { u, v }
    }

    /// Weighted poles for each dipole operator.
    pub fn lines(&self, dipoles: &[DipoleOperator], order: PoleOrder) -> Result<Vec<Vec<LabeledLine>>> {
        let funcs: Vec<Functionals> = dipoles.iter().map(|d| self.functionals(d)).collect();
        let groups: Vec<(usize, i64)> = self.theory.groups.keys().copied().collect();
        let stationary = self.theory.stationary_group();
        let per_group: Vec<Vec<Vec<LabeledLine>>> = groups
            .par_iter()
            .map(|&g| -> Result<Vec<Vec<LabeledLine>>> {
                let modes = self.theory.group_modes(g)?;
                let elastic_idx = (g == stationary).then(|| {
                    (0..modes.len()).min_by(|&x, &y| modes[x].mu.norm().total_cmp(&modes[y].mu.norm())).unwrap_or(0)
                });
                let mut out = vec![Vec::new(); funcs.len()];
                for (idx, m) in modes.iter().enumerate() {
                    let pole = match order {
                        PoleOrder::SecondOrder => m.lambda0 + m.mu,
                        PoleOrder::Lowest if g.0 == 0 => m.lambda0 + m.mu,
                        PoleOrder::Lowest => m.lambda0,
                    };
                    for (f, sink) in funcs.iter().zip(out.iter_mut()) {
                        let mut f2 = ZERO;
                        let f0 = f.traces(m, |_, w| f2 += w);
                        if g.0 == 0 {
                            let component = if Some(idx) == elastic_idx || (g == stationary && m.mu.norm() < 1e-14) {
                                Component::Elastic
                            } else {
                                match g.1.signum() {
                                    0 => Component::ElasticCorrection,
                                    -1 => Component::SidebandRed,
                                    _ => Component::SidebandBlue,
                                }
                            };
                            sink.push(LabeledLine { component, group: g, line: SpectralLine { lambda: pole, weight: f0 + f2 } });
                        } else {
                            sink.push(LabeledLine {
                                component: Component::InelasticZero,
                                group: g,
                                line: SpectralLine { lambda: pole, weight: f0 },
                            });
                            sink.push(LabeledLine {
                                component: Component::InelasticSecond,
                                group: g,
                                line: SpectralLine { lambda: pole, weight: f2 },
                            });
                        }
                    }
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        let mut lines = vec![Vec::new(); dipoles.len()];
        for group in per_group {
            for (sink, part) in lines.iter_mut().zip(group) {
                sink.extend(part);
            }
        }
        Ok(lines)
    }

    /// The ten second-order traces summed over the modes of one subspace.
    pub fn trace_terms(&self, d: &DipoleOperator, group: (usize, i64)) -> Result<BTreeMap<[usize; 4], C64>> {
        let f = self.functionals(d);
        let mut terms = BTreeMap::new();
        for m in self.theory.group_modes(group)? {
            f.traces(&m, |key, w| *terms.entry(key).or_insert(ZERO) += w);
        }
        Ok(terms)
    }

    pub fn spectrum(&self, d: &DipoleOperator, grid: &[f64], order: PoleOrder) -> Result<SpectrumResult> {
        let lines = self.lines(std::slice::from_ref(d), order)?.remove(0);
        Ok(SpectrumResult::assemble(d.transition, 2, grid, lines))
    }
}

/// `S0 + S2` with the motion thermal at `n_bar` at zero order.
pub fn second_order_spectrum(p: &SystemParams, j: usize, n_bar: f64, grid: &[f64]) -> Result<SpectrumResult> {
    SpectralEngine::new(p, MotionalState::Thermal(n_bar))?.spectrum(&DipoleOperator::new(p, j), grid, PoleOrder::Lowest)
}

fn lorentzian(weight: C64, lambda: C64, grid: &[f64]) -> Vec<f64> {
    let line = SpectralLine { lambda, weight };
    grid.iter().map(|&dw| line.eval(dw)).collect()
}

/// `-i (omega_sigma - omega2*)` for `sigma = +, -`.
fn lambda_one(p: &SystemParams) -> [C64; 2] {
    let w2 = crate::internal::omega2(p);
    dressed_states(p).map(|s| -I * (s.omega - w2.conj()))
}

/// `<g|sigma> (sigma~|rho_st|g>` for `sigma = +, -`.
fn dressed_weights(p: &SystemParams) -> [C64; 2] {
    let rho = internal_steady_state(p).rho;
    dressed_states(p).map(|s| s.ground_amplitude() * s.dual_element(&rho))
}

/// Closed-form central peak of transition 1: a Lorentzian of half-width
/// `gamma2` at `dw = 0`.
#[derive(Clone, Debug, Serialize)]
pub struct CentralPeak {
    pub p_n: f64,
    /// Weight from the dressed-state sum.
    pub weight: f64,
    /// Weight to first order in the saturation.
    pub weight_small_s: f64,
    /// `(T_D / T_B) s / 2` with the small-saturation time scales.
    pub weight_jumps: f64,
    pub half_width: f64,
    pub curve: Vec<f64>,
    pub curve_small_s: Vec<f64>,
}

pub fn central_peak_transition1(p: &SystemParams, n_bar: f64, grid: &[f64]) -> CentralPeak {
    let c2 = p.kappa(2).powi(2);
    let s = saturation(p);
    let rho = internal_steady_state(p).rho;
    let g2 = p.gamma2;
    let p_n: f64 = lambda_one(p)
        .iter()
        .zip(dressed_weights(p))
        .map(|(&l, w)| {
            let z = g2 + l;
            (w * ((2.0 * n_bar + 1.0) * z - I) / (z * z + 1.0)).re
        })
        .sum();
    let pref = c2 * p.omega2 * p.omega2;
    let weight = -pref / (2.0 * g2) * rho[[1, 0]].norm_sqr() * p_n;
    let weight_small_s = pref * n_bar / (p.gamma1 * g2) * (1.0 - 2.0 * s + 2.0 / s * g2 / p.gamma1);
    let gamma1_prime = s * p.gamma1 / 2.0;
    let weight_jumps = pref * n_bar * s / (2.0 * g2 * gamma1_prime);
    let pole = C64::new(-g2, 0.0);
    CentralPeak {
        p_n,
        weight,
        weight_small_s,
        weight_jumps,
        half_width: g2,
        curve: lorentzian(C64::new(weight, 0.0), pole, grid),
        curve_small_s: lorentzian(C64::new(weight_small_s, 0.0), pole, grid),
    }
}

/// Closed-form transition-2 sidebands (width `W/2`) and inelastic pedestal
/// at the `lambda_{1-}` pole.
#[derive(Clone, Debug, Serialize)]
pub struct Transition2Signals {
    pub gamma_sb: f64,
    pub weight_red: f64,
    pub weight_blue: f64,
    pub weight_red_small_s: f64,
    pub weight_blue_small_s: f64,
    pub weight_inel: C64,
    pub weight_inel_small_s: C64,
    pub lambda_1minus: C64,
    /// `(T_D / T_B) (2 / gamma1')` with the small-saturation time scales.
    pub pedestal_height_jumps: f64,
    pub red: Vec<f64>,
    pub blue: Vec<f64>,
    pub inelastic: Vec<f64>,
}

pub fn transition2_signals(p: &SystemParams, n_bar: f64, grid: &[f64]) -> Result<Transition2Signals> {
    if p.phi2.cos().abs() < 1e-12 || p.kappa(2) == 0.0 {
        return Err(Error::InfiniteBright);
    }
    let w_total = cooling_rates(p)?.w_total;
    let c2 = p.kappa(2).powi(2);
    let s = saturation(p);
    let (g1, g2, o2) = (p.gamma1, p.gamma2, p.omega2);
    let lam = lambda_one(p);
    let wts = dressed_weights(p);
    let sideband = |ell: f64| {
        let sum: C64 = lam.iter().zip(&wts).map(|(&l, &w)| w / (l - I * ell)).sum();
        let occupation = n_bar + if ell < 0.0 { 1.0 } else { 0.0 };
        c2 * o2 * o2 * occupation / 4.0 * sum.norm_sqr()
    };
    let (weight_blue, weight_red) = (sideband(1.0), sideband(-1.0));
    let g_minus = dressed_states(p)[1].ground_amplitude();
    let inel_sum: f64 = lam
        .iter()
        .zip(&wts)
        .map(|(&l, &w)| (w * ((2.0 * n_bar + 1.0) * l - I) / (l * l + 1.0)).re)
        .sum();
    let weight_inel = -(g_minus * g_minus) * (c2 * o2 * o2 / (2.0 * g2) * inel_sum);
    let weight_inel_small_s =
        C64::new(1.0 - 2.0 / s * g2 / g1, -s / 2.0) * (c2 * 2.0 * o2 * o2 / (g1 * g2) * n_bar / s);
    let gamma1_prime = s * g1 / 2.0;
    let gamma_sb = w_total / 2.0;
    Ok(Transition2Signals {
        gamma_sb,
        weight_red,
        weight_blue,
        weight_red_small_s: c2 * o2 * o2 * (n_bar + 1.0) / 16.0 * (1.0 - s),
        weight_blue_small_s: c2 * 4.0 * o2 * o2 * n_bar / (g1 * g1 * s * s) * (1.0 - 4.0 / s * g2 / g1),
        weight_inel,
        weight_inel_small_s,
        lambda_1minus: lam[1],
        pedestal_height_jumps: c2 * n_bar * o2 * o2 / (g2 * gamma1_prime) * 2.0 / gamma1_prime,
        red: lorentzian(C64::new(weight_red, 0.0), C64::new(-gamma_sb, -1.0), grid),
        blue: lorentzian(C64::new(weight_blue, 0.0), C64::new(-gamma_sb, 1.0), grid),
        inelastic: lorentzian(weight_inel, lam[1], grid),
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct AngleRow {
    pub phi2: f64,
    pub cos2_phi2: f64,
    pub central_peak_weight: f64,
    pub transition2_weight: f64,
    pub sideband_red: f64,
    pub sideband_blue: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PsiRow {
    pub psi: f64,
    pub sideband_red: f64,
    pub sideband_blue: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AngleReport {
    pub phi_rows: Vec<AngleRow>,
    pub psi_rows: Vec<PsiRow>,
    pub r2_central_peak: f64,
    pub r2_transition2: f64,
    /// Largest relative spread of the transition-2 sideband weights over psi.
    pub psi_variation: f64,
}

/// Coefficient of determination of a least-squares line.
pub fn linear_r2(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if syy == 0.0 {
        return 1.0;
    }
    sxy * sxy / (sxx * syy)
}

/// Central-peak and transition-2 weights over `phi2` in `[0, pi/2]`, and
/// transition-2 sideband weights over `psi`.
pub fn angle_dependence_report(p: &SystemParams, n_bar: f64, n_phi: usize, n_psi: usize) -> Result<AngleReport> {
    let shelve = (InternalMode::Decay.index(), 0);
    let phis: Vec<f64> = (0..n_phi).map(|k| std::f64::consts::FRAC_PI_2 * k as f64 / (n_phi - 1).max(1) as f64).collect();
    let phi_rows = phis
        .iter()
        .map(|&phi2| -> Result<AngleRow> {
            let q = SystemParams { phi2, ..p.clone() };
            let engine = SpectralEngine::new(&q, MotionalState::Thermal(n_bar))?;
            let dipoles = [DipoleOperator::new(&q, 1), DipoleOperator::new(&q, 2)];
            let lines = engine.lines(&dipoles, PoleOrder::Lowest)?;
            let sum = |ls: &[LabeledLine], f: &dyn Fn(&LabeledLine) -> bool| ls.iter().filter(|l| f(l)).map(|l| l.line.weight.re).sum::<f64>();
            Ok(AngleRow {
                phi2,
                cos2_phi2: phi2.cos().powi(2),
                central_peak_weight: sum(&lines[0], &|l| l.group == shelve),
                transition2_weight: sum(&lines[1], &|l| l.component != Component::Elastic),
                sideband_red: sum(&lines[1], &|l| l.component == Component::SidebandRed),
                sideband_blue: sum(&lines[1], &|l| l.component == Component::SidebandBlue),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let engine = SpectralEngine::new(p, MotionalState::Thermal(n_bar))?;
    let psis: Vec<f64> = (0..n_psi).map(|k| std::f64::consts::PI * k as f64 / n_psi.max(1) as f64).collect();
    let dipoles: Vec<DipoleOperator> = psis.iter().map(|&psi| DipoleOperator::at_angle(p, 2, psi)).collect();
    let psi_rows: Vec<PsiRow> = engine
        .lines(&dipoles, PoleOrder::Lowest)?
        .iter()
        .zip(&psis)
        .map(|(ls, &psi)| {
            let w = |c| ls.iter().filter(|l| l.component == c).map(|l| l.line.weight.re).sum::<f64>();
            PsiRow { psi, sideband_red: w(Component::SidebandRed), sideband_blue: w(Component::SidebandBlue) }
        })
        .collect();
    let spread = |f: &dyn Fn(&PsiRow) -> f64| {
        let vals: Vec<f64> = psi_rows.iter().map(f).collect();
        let max = vals.iter().copied().fold(f64::MIN, f64::max);
        let min = vals.iter().copied().fold(f64::MAX, f64::min);
        (max - min) / max.abs().max(f64::MIN_POSITIVE)
    };
    let psi_variation = spread(&|r| r.sideband_red).max(spread(&|r| r.sideband_blue));
    let cos2: Vec<f64> = phi_rows.iter().map(|r| r.cos2_phi2).collect();
    let cp: Vec<f64> = phi_rows.iter().map(|r| r.central_peak_weight).collect();
    let t2: Vec<f64> = phi_rows.iter().map(|r| r.transition2_weight).collect();
    Ok(AngleReport {
        r2_central_peak: linear_r2(&cos2, &cp),
        r2_transition2: linear_r2(&cos2, &t2),
        phi_rows,
        psi_rows,
        psi_variation,
    })
}

/// Half width at half maximum of the highest peak of a sampled curve.
pub fn half_width(grid: &[f64], curve: &[f64]) -> Option<f64> {
    let (imax, &max) = curve.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    let half = max / 2.0;
    let cross = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut prev = imax;
        for i in range {
            if curve[i] < half {
                let w = (curve[prev] - half) / (curve[prev] - curve[i]);
                return Some(grid[prev] + w * (grid[i] - grid[prev]));
            }
            prev = i;
        }
        None
    };
    let right = cross(&mut (imax + 1..curve.len()))?;
    let left = cross(&mut (0..imax).rev())?;
    Some((right - left) / 2.0)
}
