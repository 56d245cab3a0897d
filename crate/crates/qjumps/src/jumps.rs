//! Photon waiting times, bright and dark periods, and quantum-jump
//! trajectories.

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{storage::Owned, DVector, Dyn, OMatrix, Vector4, U4};
use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cooling::{cooling_rates, thermal_distribution, thermal_state};
use crate::error::{Error, Result};
use crate::hilbert::{self, transition, Level, QOperator, N_LEVELS};
use crate::internal::{dressed_states, internal_steady_state, omega2, saturation};
use crate::liouville::{build_hamiltonian, SystemParams};
use crate::linalg::{self, EigenPairs, I, ZERO};

/// Minimum ratio of the slow to the fast time scale.
pub const MIN_SEPARATION: f64 = 10.0;

/// `H_eff = H - i sum_j gamma_j/2 |j><j|` with its eigendecomposition.
#[derive(Clone, Debug)]
pub struct EffectiveHamiltonian {
    pub h: QOperator,
    pub pairs: EigenPairs,
    /// `V^dagger V` of the right eigenvectors.
    pub gram: Array2<C64>,
}

impl EffectiveHamiltonian {
    pub fn new(p: &SystemParams) -> Result<Self> {
        p.validate()?;
        let dims = p.dims();
        let mut h = build_hamiltonian(p);
        for j in [1usize, 2] {
            let e = Level::excited(j);
            let proj = hilbert::atomic(dims, e, e);
            h = h.sub(&proj.scale(I * (p.gamma(j) / 2.0)));
        }
        let pairs = EigenPairs::new(&h.data)?;
        let gram = linalg::dagger(&pairs.right).dot(&pairs.right);
        Ok(Self { h, pairs, gram })
    }

    pub fn dim(&self) -> usize {
        self.pairs.len()
    }

    fn phases(&self, t: f64) -> Array1<C64> {
        self.pairs.values.mapv(|l| (-I * l * t).exp())
    }

    /// `exp(-i H_eff t) psi`.
    pub fn propagate(&self, psi: &Array1<C64>, t: f64) -> Array1<C64> {
        let c = self.pairs.left.dot(psi) * self.phases(t);
        self.pairs.right.dot(&c)
    }

    /// `Tr{exp(-i H_eff t) rho0 exp(i H_eff^dagger t)}` on a set of times.
    pub fn survival_curve(&self, rho0: &Array2<C64>, times: &[f64]) -> Vec<f64> {
        let vinv = &self.pairs.left;
        let r = vinv.dot(rho0).dot(&linalg::dagger(vinv));
        let m = Array2::from_shape_fn(r.dim(), |(i, j)| self.gram[[j, i]] * r[[i, j]]);
        times
            .par_iter()
            .map(|&t| {
                let e = self.phases(t);
                let me = m.dot(&e.mapv(|z| z.conj()));
                linalg::dot(e.view(), me.view()).re
            })
            .collect()
    }
}

/// Post-detection state `|g><g| kron mu_th(n_bar)`.
pub fn post_detection_state(n_bar: f64, n_fock: usize) -> Array2<C64> {
    linalg::kron(&transition(Level::G, Level::G), &thermal_state(n_bar, n_fock))
}

/// `A exp(-t/t_fast) + B exp(-t/t_slow)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BiexpFit {
    pub amp_fast: f64,
    pub t_fast: f64,
    pub amp_slow: f64,
    pub t_slow: f64,
}

impl BiexpFit {
    pub fn eval(&self, t: f64) -> f64 {
        self.amp_fast * (-t / self.t_fast).exp() + self.amp_slow * (-t / self.t_slow).exp()
    }

    pub fn separation(&self) -> f64 {
        self.t_slow / self.t_fast
    }
}

struct BiexpProblem<'a> {
    t: &'a [f64],
    logp: &'a [f64],
    x: Vector4<f64>,
}

impl BiexpProblem<'_> {
    fn parts(&self, t: f64) -> (f64, f64, f64, f64) {
        let a = 1.0 / (1.0 + (-self.x[0]).exp());
        let (tf, ts, b) = (self.x[1].exp(), self.x[2].exp(), self.x[3].exp());
        let fast = a * (-t / tf).exp();
        let slow = b * (-t / ts).exp();
        (a, fast, slow, fast + slow)
    }
}

impl LeastSquaresProblem<f64, Dyn, U4> for BiexpProblem<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, U4>;
    type ParameterStorage = Owned<f64, U4>;

    fn set_params(&mut self, x: &Vector4<f64>) {
        self.x = *x;
    }

    fn params(&self) -> Vector4<f64> {
        self.x
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let r = DVector::from_iterator(self.t.len(), self.t.iter().zip(self.logp).map(|(&t, &y)| self.parts(t).3.ln() - y));
        r.iter().all(|v| v.is_finite()).then_some(r)
    }

    fn jacobian(&self) -> Option<OMatrix<f64, Dyn, U4>> {
        let (tf, ts) = (self.x[1].exp(), self.x[2].exp());
        let mut j = OMatrix::<f64, Dyn, U4>::zeros(self.t.len());
        for (row, &t) in self.t.iter().enumerate() {
            let (a, fast, slow, m) = self.parts(t);
            j[(row, 0)] = (1.0 - a) * fast / m;
            j[(row, 1)] = fast * (t / tf) / m;
            j[(row, 2)] = slow * (t / ts) / m;
            j[(row, 3)] = slow / m;
        }
        j.iter().all(|v| v.is_finite()).then_some(j)
    }
}

/// Least-squares fit of `ln P` to a biexponential; fails when the two time
/// scales are not separated by at least [`MIN_SEPARATION`].
pub fn fit_biexponential(times: &[f64], p: &[f64]) -> Result<BiexpFit> {
    let (t, y): (Vec<f64>, Vec<f64>) = times.iter().zip(p).filter(|(_, &v)| v > 1e-14).map(|(&t, &v)| (t, v.ln())).unzip();
    if t.len() < 8 {
        return Err(Error::Fit("too few positive samples".into()));
    }
    let n = t.len();
    let (t_mid, y_mid) = (t[n / 2], y[n / 2]);
    let (t_end, y_end) = (t[n - 1], y[n - 1]);
    let slope = (y_end - y_mid) / (t_end - t_mid);
    let ts0 = if slope < 0.0 { -1.0 / slope } else { t_end };
    let b0 = (y_end + t_end / ts0).exp().clamp(1e-12, 0.5);
    let a0 = (1.0 - b0).clamp(1e-6, 1.0 - 1e-9);
    let threshold = (b0 + a0 / std::f64::consts::E).ln();
    let tf0 = t.iter().zip(&y).find(|(_, &v)| v < threshold).map(|(&t, _)| t).unwrap_or(t_end / 10.0).max(1e-6);
    let x0 = Vector4::new((a0 / (1.0 - a0)).ln(), tf0.ln(), ts0.ln(), b0.ln());
    let problem = BiexpProblem { t: &t, logp: &y, x: x0 };
    let (solved, report) = LevenbergMarquardt::new().with_patience(400).minimize(problem);
    if !report.objective_function.is_finite() {
        return Err(Error::Fit(format!("{:?}", report.termination)));
    }
    let x = solved.x;
    let a = 1.0 / (1.0 + (-x[0]).exp());
    let mut fit = BiexpFit { amp_fast: a, t_fast: x[1].exp(), amp_slow: x[3].exp(), t_slow: x[2].exp() };
    if fit.t_fast > fit.t_slow {
        fit = BiexpFit { amp_fast: fit.amp_slow, t_fast: fit.t_slow, amp_slow: fit.amp_fast, t_slow: fit.t_fast };
    }
    let negligible = fit.amp_slow.min(fit.amp_fast) < 1e-9;
    if fit.separation() < MIN_SEPARATION || negligible {
        return Err(Error::NoTimescaleSeparation(if negligible { 1.0 } else { fit.separation() }));
    }
    Ok(fit)
}

/// Rule selecting the split time from a biexponential fit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    /// Time at which the fast and slow components are equal.
    #[default]
    Crossover,
    /// `sqrt(t_fast t_slow)`.
    GeometricMean,
}

pub fn split_time(fit: &BiexpFit, rule: SplitRule) -> f64 {
    match rule {
        SplitRule::GeometricMean => (fit.t_fast * fit.t_slow).sqrt(),
        SplitRule::Crossover => (fit.amp_fast / fit.amp_slow).ln() / (1.0 / fit.t_fast - 1.0 / fit.t_slow),
    }
}

/// Log-linear interpolation of a sampled positive curve.
fn interpolate(times: &[f64], p: &[f64], t: f64) -> f64 {
    let k = times.partition_point(|&x| x <= t).clamp(1, times.len() - 1);
    let (t0, t1, p0, p1) = (times[k - 1], times[k], p[k - 1], p[k]);
    let w = (t - t0) / (t1 - t0);
    if p0 > 0.0 && p1 > 0.0 {
        (p0.ln() * (1.0 - w) + p1.ln() * w).exp()
    } else {
        p0 * (1.0 - w) + p1 * w
    }
}

fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[1].1 + w[0].1)).sum()
}

/// Mean bright and dark durations `(T_B, T_D)` from a sampled `P(t)`; the
/// integral beyond the grid uses the fitted slow time.
pub fn bright_dark_periods(times: &[f64], p: &[f64], tau: f64, t_slow: f64) -> (f64, f64) {
    let p_tau = interpolate(times, p, tau);
    let mut head: Vec<(f64, f64)> = times.iter().zip(p).filter(|(&t, _)| t < tau).map(|(&t, &v)| (t, v)).collect();
    head.push((tau, p_tau));
    let mut tail = vec![(tau, p_tau)];
    tail.extend(times.iter().zip(p).filter(|(&t, _)| t > tau).map(|(&t, &v)| (t, v)));
    let p_end = *p.last().unwrap_or(&0.0);
    let t_b = (tau + trapezoid(&head) / p_tau) / (1.0 - p_tau);
    let t_d = tau + (trapezoid(&tail) + p_end * t_slow) / p_tau;
    (t_b, t_d)
}

/// Zero-point time grid `0` plus `n` log-spaced points on `[t_min, t_max]`.
pub fn log_grid(t_min: f64, t_max: f64, n: usize) -> Vec<f64> {
    let (a, b) = (t_min.ln(), t_max.ln());
    std::iter::once(0.0).chain((0..n).map(|k| (a + (b - a) * k as f64 / (n - 1).max(1) as f64).exp())).collect()
}

/// Default waiting-time grid, `1e-3` to `40 / gamma2`.
pub fn default_grid(p: &SystemParams) -> Vec<f64> {
    log_grid(1e-3, 40.0 / p.gamma2, 800)
}

/// Closed-form time scales of the telegraph signal.
#[derive(Clone, Debug, Serialize)]
pub struct AnalyticScales {
    pub t_b: f64,
    pub t_d: f64,
    /// `Gamma^2` from the dressed-state sum.
    pub gamma_sq: f64,
    /// `Gamma^2` from its small-saturation expansion.
    pub gamma_sq_approx: f64,
    /// `gamma1'^2 / (4 n_bar)`.
    pub gamma_sq_small_s: f64,
    pub t0: f64,
    pub t_b_approx: f64,
    pub t_b_small_s: f64,
    pub gamma1_prime: f64,
}

/// `sum_sigma <g|sigma><sigma~|g> / (z - omega_sigma)`.
fn dressed_green(p: &SystemParams, z: C64) -> C64 {
    dressed_states(p).iter().map(|s| s.ket[0] * s.dual[0] / (z - s.omega)).sum()
}

pub fn analytic_scales(p: &SystemParams, n_bar: f64) -> Result<AnalyticScales> {
    let k2 = p.kappa(2);
    if p.phi2.cos().abs() < 1e-12 || k2 == 0.0 {
        return Err(Error::InfiniteBright);
    }
    let s = saturation(p);
    let rho11 = internal_steady_state(p).rho[[1, 1]].re;
    let t0 = 1.0 / (p.gamma1 * rho11);
    let w2 = omega2(p);
    let inv: f64 = [1.0f64, -1.0]
        .iter()
        .map(|&l| (n_bar + if l > 0.0 { 1.0 } else { 0.0 }) * dressed_green(p, w2 + l).norm_sqr())
        .sum();
    let gamma_sq = 1.0 / inv;
    let g1 = p.gamma1;
    let gamma_sq_approx = 1.0 / (16.0 * n_bar / (g1 * g1 * s * s) * (1.0 + s + 4.0 * p.gamma2 / (s * g1)));
    let gamma1_prime = s * g1 / 2.0;
    let scale = 4.0 * t0 / (k2 * k2 * p.omega2 * p.omega2);
    Ok(AnalyticScales {
        t_b: scale * gamma_sq,
        t_d: 1.0 / p.gamma2,
        gamma_sq,
        gamma_sq_approx,
        gamma_sq_small_s: gamma1_prime * gamma1_prime / (4.0 * n_bar),
        t0,
        t_b_approx: scale * gamma_sq_approx,
        t_b_small_s: gamma1_prime / (k2 * k2 * n_bar * p.omega2 * p.omega2),
        gamma1_prime,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct WaitingTimeResult {
    pub times: Vec<f64>,
    pub p: Vec<f64>,
    pub n_bar: f64,
    pub fit: Option<BiexpFit>,
    pub tau: Option<f64>,
    pub t_b: Option<f64>,
    pub t_d: Option<f64>,
    /// Reason the split failed, if it did.
    pub split_error: Option<String>,
    pub analytic: Option<AnalyticScales>,
}

/// Exact `P(t)` after a detection at steady state of laser cooling, with
/// the extracted and closed-form time scales.
pub fn waiting_time(p: &SystemParams, grid: &[f64]) -> Result<WaitingTimeResult> {
    let n_bar = cooling_rates(p)?.n_bar;
    waiting_time_with(p, n_bar, grid, SplitRule::default())
}

pub fn waiting_time_with(p: &SystemParams, n_bar: f64, grid: &[f64], rule: SplitRule) -> Result<WaitingTimeResult> {
    let heff = EffectiveHamiltonian::new(p)?;
    let rho0 = post_detection_state(n_bar, p.n_fock);
    let curve = heff.survival_curve(&rho0, grid);
    let mut out = WaitingTimeResult {
        times: grid.to_vec(),
        p: curve,
        n_bar,
        fit: None,
        tau: None,
        t_b: None,
        t_d: None,
        split_error: None,
        analytic: analytic_scales(p, n_bar).ok(),
    };
    match fit_biexponential(grid, &out.p) {
        Ok(fit) => {
            let tau = split_time(&fit, rule);
            let (t_b, t_d) = bright_dark_periods(grid, &out.p, tau, fit.t_slow);
            out.fit = Some(fit);
            out.tau = Some(tau);
            out.t_b = Some(t_b);
            out.t_d = Some(t_d);
        }
        Err(e) => out.split_error = Some(e.to_string()),
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct PerturbativeWaitingTime {
    pub p: Vec<f64>,
    /// Weight of the slow (shelved) component.
    pub slow_weight: f64,
}

/// Second-order `P(t)`: zero-order dressed decay plus the shelving component
/// decaying at `gamma2`; mixed fast-slow terms are dropped.
pub fn perturbative_waiting_time(p: &SystemParams, n_bar: f64, grid: &[f64]) -> PerturbativeWaitingTime {
    let states = dressed_states(p);
    let w2 = omega2(p);
    let k2 = p.kappa(2);
    let pm = thermal_distribution(n_bar, p.n_fock);
    let (gp, gm) = (dressed_green(p, w2 + 1.0).norm_sqr(), dressed_green(p, w2 - 1.0).norm_sqr());
    let occupancy: f64 = pm.iter().enumerate().map(|(m, w)| w * ((m as f64 + 1.0) * gp + m as f64 * gm)).sum();
    let slow = k2 * k2 * (p.omega2 / 2.0).powi(2) * occupancy;
    let values = grid
        .iter()
        .map(|&t| {
            let mut fast = ZERO;
            for a in &states {
                for b in &states {
                    let overlap: C64 = (0..N_LEVELS).map(|i| b.ket[i].conj() * a.ket[i]).sum();
                    fast += (-I * (a.omega - b.omega.conj()) * t).exp() * overlap * a.dual[0] * b.dual[0].conj();
                }
            }
            (1.0 - slow) * fast.re + slow * (-p.gamma2 * t).exp()
        })
        .collect();
    PerturbativeWaitingTime { p: values, slow_weight: slow }
}

/// One photon emission.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Emission {
    pub time: f64,
    pub transition: usize,
    pub u: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PeriodKind {
    Bright,
    Dark,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Period {
    pub start: f64,
    pub end: f64,
    pub kind: PeriodKind,
}

impl Period {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TrajectoryRecord {
    pub duration: f64,
    pub events: Vec<Emission>,
    pub periods: Vec<Period>,
}

impl TrajectoryRecord {
    /// Gaps between consecutive emissions on any transition.
    pub fn gaps(&self) -> Vec<f64> {
        self.events.windows(2).map(|w| w[1].time - w[0].time).collect()
    }

    pub fn durations(&self, kind: PeriodKind) -> Vec<f64> {
        self.periods.iter().filter(|p| p.kind == kind).map(Period::duration).collect()
    }
}

/// Inverse of the cumulative dipole pattern, `(3u + u^3)/8 + 1/2 = f`.
pub fn sample_direction(f: f64) -> f64 {
    let q = 8.0 * f - 4.0;
    let r = (q * q / 4.0 + 1.0).sqrt();
    (q / 2.0 + r).cbrt() + (q / 2.0 - r).cbrt()
}

/// Partition of the record into bright and dark periods: a dark period is a
/// gap between emissions on transition 1 longer than `tau`.
pub fn classify_periods(events: &[Emission], duration: f64, tau: f64) -> Vec<Period> {
    let mut periods = Vec::new();
    let mut start = 0.0;
    let mut last = 0.0;
    for e in events.iter().filter(|e| e.transition == 1) {
        if e.time - last > tau {
            if last > start {
                periods.push(Period { start, end: last, kind: PeriodKind::Bright });
            }
            periods.push(Period { start: last, end: e.time, kind: PeriodKind::Dark });
            start = e.time;
        }
        last = e.time;
    }
    if duration > start {
        periods.push(Period { start, end: duration, kind: PeriodKind::Bright });
    }
    periods
}

struct Segment<'a> {
    heff: &'a EffectiveHamiltonian,
    c: Array1<C64>,
}

impl Segment<'_> {
    fn amplitudes(&self, t: f64) -> Array1<C64> {
        &self.c * &self.heff.phases(t)
    }

    /// `||psi(t)||^2` and its time derivative.
    fn norm(&self, t: f64) -> (f64, f64) {
        let a = self.amplitudes(t);
        let ga = self.heff.gram.dot(&a);
        let da = &a * &self.heff.pairs.values.mapv(|l| -I * l);
        let n = a.iter().zip(ga.iter()).map(|(x, y)| x.conj() * y).sum::<C64>().re;
        let dn = 2.0 * da.iter().zip(ga.iter()).map(|(x, y)| x.conj() * y).sum::<C64>().re;
        (n, dn)
    }

    /// Time at which the squared norm reaches `target`, or `None` beyond `t_max`.
    fn crossing(&self, target: f64, t_max: f64) -> Option<f64> {
        let mut lo = 0.0;
        let mut hi = 1.0;
        loop {
            if hi > t_max {
                if self.norm(t_max).0 > target {
                    return None;
                }
                hi = t_max;
                break;
            }
            if self.norm(hi).0 <= target {
                break;
            }
            lo = hi;
            hi *= 2.0;
        }
        let mut t = 0.5 * (lo + hi);
        for _ in 0..200 {
            let (n, dn) = self.norm(t);
            let f = n - target;
            if f.abs() <= 1e-12 * target || hi - lo < 1e-12 * hi.max(1.0) {
                return Some(t);
            }
            if f > 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            let newton = if dn < 0.0 { t - f / dn } else { f64::NAN };
            t = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        }
        Some(t)
    }
}

/// Quantum-jump unravelling of the master equation: non-Hermitian evolution
/// interleaved with emissions `|g><j| exp(-i eta_j u X)`, `u` drawn from the
/// dipole pattern. The motion starts thermal at `n_bar`.
pub fn simulate_trajectory(p: &SystemParams, n_bar: f64, duration: f64, tau: f64, seed: u64) -> Result<TrajectoryRecord> {
    let heff = EffectiveHamiltonian::new(p)?;
    let nf = p.n_fock;
    let d = heff.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (xw, xv) = {
        use ndarray_linalg::{Eigh, UPLO};
        hilbert::fock_position(nf).eigh(UPLO::Lower)?
    };
    let pn = thermal_distribution(n_bar, nf);
    let mut psi = Array1::<C64>::zeros(d);
    let draw: f64 = rng.random();
    let mut acc = 0.0;
    let mut n0 = nf - 1;
    for (n, w) in pn.iter().enumerate() {
        acc += w;
        if draw < acc {
            n0 = n;
            break;
        }
    }
    psi[n0] = C64::new(1.0, 0.0);

    let mut events = Vec::new();
    let mut now = 0.0;
    while now < duration {
        let seg = Segment { heff: &heff, c: heff.pairs.left.dot(&psi) };
        let target: f64 = rng.random::<f64>().max(1e-300);
        let Some(dt) = seg.crossing(target, duration - now) else {
            break;
        };
        now += dt;
        let state = heff.pairs.right.dot(&seg.amplitudes(dt));
        let w1 = p.gamma1 * (nf..2 * nf).map(|i| state[i].norm_sqr()).sum::<f64>();
        let w2 = p.gamma2 * (2 * nf..3 * nf).map(|i| state[i].norm_sqr()).sum::<f64>();
        let j = if rng.random::<f64>() * (w1 + w2) < w1 { 1 } else { 2 };
        let u = sample_direction(rng.random());
        let source = &state.slice(ndarray::s![j * nf..(j + 1) * nf]);
        let phase = xw.mapv(|x| C64::from_polar(1.0, -p.eta(j) * u * x));
        let proj = xv.t().mapv(|x| C64::new(x, 0.0)).dot(source) * phase;
        let kicked = xv.mapv(|x| C64::new(x, 0.0)).dot(&proj);
        let norm = linalg::vec_norm(&kicked);
        psi.fill(ZERO);
        psi.slice_mut(ndarray::s![0..nf]).assign(&kicked.mapv(|z| z / norm));
        events.push(Emission { time: now, transition: j, u });
    }
    let periods = classify_periods(&events, duration, tau);
    Ok(TrajectoryRecord { duration, events, periods })
}

/// Kolmogorov-Smirnov distance between the empirical survival function of
/// `samples` and a model survival function.
pub fn ks_distance(samples: &[f64], survival: impl Fn(&[f64]) -> Vec<f64>) -> f64 {
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let model = survival(&x);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, _)| {
            let above = 1.0 - i as f64 / n;
            let below = 1.0 - (i + 1) as f64 / n;
            (model[i] - above).abs().max((model[i] - below).abs())
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn small(n_fock: usize) -> SystemParams {
        SystemParams { n_fock, ..SystemParams::reference() }
    }

    #[test]
    fn effective_hamiltonian_decays() {
        let h = EffectiveHamiltonian::new(&small(6)).unwrap();
        assert!(h.pairs.values.iter().all(|l| l.im <= 1e-12));
        let herm = build_hamiltonian(&small(6));
        let diff = herm.sub(&h.h);
        assert!((diff.block(Level::E1, Level::E1)[[0, 0]] - I * 6.0).norm() < 1e-12);
    }

    #[test]
    fn propagation_matches_runge_kutta() {
        let p = small(5);
        let h = EffectiveHamiltonian::new(&p).unwrap();
        let mut psi = Array1::<C64>::zeros(h.dim());
        psi[0] = C64::new(0.6, 0.0);
        psi[6] = C64::new(0.0, 0.8);
        let (t, steps) = (3.0, 30_000);
        let dt = t / steps as f64;
        let f = |y: &Array1<C64>| h.h.data.dot(y).mapv(|z| -I * z);
        let mut y = psi.clone();
        for _ in 0..steps {
            let k1 = f(&y);
            let k2 = f(&(&y + &k1.mapv(|z| z * (dt / 2.0))));
            let k3 = f(&(&y + &k2.mapv(|z| z * (dt / 2.0))));
            let k4 = f(&(&y + &k3.mapv(|z| z * dt)));
            y = &y + &((k1 + k2.mapv(|z| z * 2.0) + k3.mapv(|z| z * 2.0) + k4).mapv(|z| z * (dt / 6.0)));
        }
        let exact = h.propagate(&psi, t);
        assert!(linalg::vec_norm(&(exact - y)) < 1e-8);
    }

    #[test]
    fn survival_is_monotone_and_bounded() {
        let p = small(8);
        let h = EffectiveHamiltonian::new(&p).unwrap();
        let grid = log_grid(1e-3, 2000.0, 200);
        let curve = h.survival_curve(&post_detection_state(0.3, 8), &grid);
        assert!((curve[0] - 1.0).abs() < 1e-10);
        for w in curve.windows(2) {
            assert!(w[1] <= w[0] + 1e-10);
        }
        assert!(curve.iter().all(|&v| (-1e-10..=1.0 + 1e-10).contains(&v)));
    }

    #[test]
    fn single_exponential_has_no_split() {
        let grid = log_grid(1e-3, 100.0, 300);
        let p: Vec<f64> = grid.iter().map(|t| (-0.5 * t).exp()).collect();
        assert!(matches!(fit_biexponential(&grid, &p), Err(Error::NoTimescaleSeparation(_))));
    }

    #[test]
    fn biexponential_recovery_and_split() {
        let grid = log_grid(1e-3, 3000.0, 600);
        let truth = BiexpFit { amp_fast: 0.998, t_fast: 4.0, amp_slow: 2e-3, t_slow: 66.7 };
        let p: Vec<f64> = grid.iter().map(|&t| truth.eval(t)).collect();
        let fit = fit_biexponential(&grid, &p).unwrap();
        assert!((fit.t_fast - 4.0).abs() < 1e-6 && (fit.t_slow - 66.7).abs() < 1e-6);
        for rule in [SplitRule::Crossover, SplitRule::GeometricMean] {
            let tau = split_time(&fit, rule);
            assert!(tau > fit.t_fast && tau < fit.t_slow);
        }
        let c = split_time(&fit, SplitRule::Crossover);
        assert!((fit.amp_fast * (-c / fit.t_fast).exp() - fit.amp_slow * (-c / fit.t_slow).exp()).abs() < 1e-12);
    }

    #[test]
    fn dark_period_of_single_exponential() {
        let gamma = 0.02;
        let grid: Vec<f64> = (0..=200_000).map(|k| k as f64 * 0.01).collect();
        let p: Vec<f64> = grid.iter().map(|t| (-gamma * t).exp()).collect();
        for tau in [5.0, 40.0, 300.0] {
            let (_, t_d) = bright_dark_periods(&grid, &p, tau, 1.0 / gamma);
            assert!((t_d - (tau + 1.0 / gamma)).abs() < 1e-4 * t_d, "{t_d}");
        }
    }

    #[test]
    fn infinite_bright_period() {
        let p = SystemParams { phi2: PI / 2.0, ..small(8) };
        assert!(matches!(analytic_scales(&p, 0.3), Err(Error::InfiniteBright)));
    }

    #[test]
    fn analytic_bright_time_scales_inversely_with_phonons() {
        let p = small(8);
        let a = analytic_scales(&p, 0.2).unwrap();
        let b = analytic_scales(&p, 0.4).unwrap();
        assert!((a.t_b_small_s / b.t_b_small_s - 2.0).abs() < 1e-12);
        assert!((a.gamma_sq - a.gamma_sq_approx).abs() / a.gamma_sq < 0.3);
        assert!((a.t0 - 4.0067).abs() < 1e-3);
    }

    #[test]
    fn perturbative_curve_limits() {
        let p = small(10);
        let grid = log_grid(1e-3, 100.0, 50);
        let none = perturbative_waiting_time(&p.with_eta(0.05, 0.0), 0.3, &grid);
        assert_eq!(none.slow_weight, 0.0);
        assert!((none.p[0] - 1.0).abs() < 1e-12);
        let a = perturbative_waiting_time(&p.with_eta(0.05, 0.02), 0.3, &grid).slow_weight;
        let b = perturbative_waiting_time(&p.with_eta(0.05, 0.04), 0.3, &grid).slow_weight;
        assert!(((b / a).log2() - 2.0).abs() < 0.1);
    }

    #[test]
    fn direction_sampling_inverts_cdf() {
        for f in [0.0, 0.1, 0.5, 0.77, 1.0] {
            let u = sample_direction(f);
            assert!(((3.0 * u + u * u * u) / 8.0 + 0.5 - f).abs() < 1e-12);
        }
    }

    #[test]
    fn periods_partition_record() {
        let events: Vec<Emission> = [1.0, 2.0, 50.0, 51.0, 52.0]
            .iter()
            .map(|&time| Emission { time, transition: 1, u: 0.0 })
            .collect();
        let periods = classify_periods(&events, 60.0, 10.0);
        assert_eq!(periods.len(), 3);
        assert_eq!(periods[1].kind, PeriodKind::Dark);
        assert_eq!((periods[1].start, periods[1].end), (2.0, 50.0));
        assert_eq!(periods[0].start, 0.0);
        assert_eq!(periods[2].end, 60.0);
        for w in periods.windows(2) {
            assert_eq!(w[0].end, w[1].start);
        }
    }

    #[test]
    fn no_shelving_no_dark_periods() {
        let p = small(6).with_eta(0.05, 0.0);
        let rec = simulate_trajectory(&p, 0.3, 2000.0, 60.0, 7).unwrap();
        assert!(rec.events.len() > 100);
        assert!(rec.events.iter().all(|e| e.transition == 1));
        assert!(rec.durations(PeriodKind::Dark).is_empty());
        for w in rec.events.windows(2) {
            assert!(w[0].time <= w[1].time);
        }
    }

    #[test]
    fn trajectories_are_reproducible() {
        let p = small(5);
        let a = simulate_trajectory(&p, 0.3, 300.0, 30.0, 11).unwrap();
        let b = simulate_trajectory(&p, 0.3, 300.0, 30.0, 11).unwrap();
        assert_eq!(a.events.len(), b.events.len());
        assert!(a.events.iter().zip(&b.events).all(|(x, y)| x.time == y.time && x.u == y.u));
    }

    #[test]
    fn norm_decreases_between_clicks() {
        let p = small(5);
        let h = EffectiveHamiltonian::new(&p).unwrap();
        let mut psi = Array1::<C64>::zeros(h.dim());
        psi[1] = C64::new(1.0, 0.0);
        let seg = Segment { heff: &h, c: h.pairs.left.dot(&psi) };
        let mut prev = 1.0 + 1e-12;
        for k in 0..200 {
            let (n, dn) = seg.norm(k as f64 * 0.1);
            assert!(n <= prev + 1e-12 && dn <= 1e-12);
            prev = n;
        }
    }
}
