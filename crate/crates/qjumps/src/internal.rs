//! Eigensystem of the internal (three-level, atom-at-rest) Liouvillian.
//!
//! Left elements pair with right elements through the bilinear trace
//! `Tr{left right}`; the dual bras of the dressed states carry the same
//! components as the kets, unconjugated.

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::hilbert::{transition, Level, N_LEVELS};
use crate::liouville::{SuperOperator, SystemParams};
use crate::linalg::{self, EigenPairs, I, ONE, ZERO};

/// Eigenvalues closer than this are reported as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-8;

/// Saturation parameter of the `g-1` transition.
pub fn saturation(p: &SystemParams) -> f64 {
    (p.omega1 * p.omega1 / 2.0) / (p.delta1 * p.delta1 + p.gamma1 * p.gamma1 / 4.0)
}

/// Complex frequency of the metastable level, `delta2 - i gamma2 / 2`.
pub fn omega2(p: &SystemParams) -> C64 {
    C64::new(p.delta2, -p.gamma2 / 2.0)
}

/// Complex eigenfrequencies `(omega_plus, omega_minus)` of the driven `g-1`
/// pair, labelled by continuity from `Omega1 = 0`.
pub fn dressed_frequencies(p: &SystemParams) -> (C64, C64) {
    let z = C64::new(p.delta1, -p.gamma1 / 2.0);
    let mut r = (z * z + p.omega1 * p.omega1).sqrt();
    if (r - z).norm() > (-r - z).norm() {
        r = -r;
    }
    (0.5 * (z + r), 0.5 * (z - r))
}

/// Right eigenvector `ket` and dual `dual` of the effective internal
/// Hamiltonian, components ordered `(g, 1, 2)`.
#[derive(Clone, Copy, Debug)]
pub struct DressedState {
    pub omega: C64,
    pub ket: [C64; 3],
    pub dual: [C64; 3],
}

impl DressedState {
    /// `<g|sigma>`.
    pub fn ground_amplitude(&self) -> C64 {
        self.ket[0]
    }

    /// `(sigma~| rho |g>` with the unconjugated dual.
    pub fn dual_element(&self, rho: &Array2<C64>) -> C64 {
        (0..3).map(|i| self.dual[i] * rho[[i, 0]]).sum()
    }
}

/// `[|+>, |->]`.
pub fn dressed_states(p: &SystemParams) -> [DressedState; 2] {
    let (wp, wm) = dressed_frequencies(p);
    if p.omega1 == 0.0 {
        return [
            DressedState { omega: wp, ket: [ZERO, ONE, ZERO], dual: [ZERO, ONE, ZERO] },
            DressedState { omega: wm, ket: [ONE, ZERO, ZERO], dual: [ONE, ZERO, ZERO] },
        ];
    }
    let make = |w: C64| {
        let half = C64::new(p.omega1 / 2.0, 0.0);
        let nrm = (w * w + half * half).sqrt();
        let ket = [half / nrm, w / nrm, ZERO];
        DressedState { omega: w, ket, dual: ket }
    };
    [make(wp), make(wm)]
}

/// `H_int + V(0)`: detunings and the running-wave drive at the trap centre.
pub fn internal_hamiltonian(p: &SystemParams) -> Array2<C64> {
    let mut h = Array2::zeros((N_LEVELS, N_LEVELS));
    h[[1, 1]] = C64::new(p.delta1, 0.0);
    h[[2, 2]] = C64::new(p.delta2, 0.0);
    h[[1, 0]] = C64::new(p.omega1 / 2.0, 0.0);
    h[[0, 1]] = C64::new(p.omega1 / 2.0, 0.0);
    h
}

/// Non-Hermitian internal Hamiltonian `H_int + V(0) - i sum gamma_j/2 |j><j|`.
pub fn effective_internal_hamiltonian(p: &SystemParams) -> Array2<C64> {
    let mut h = internal_hamiltonian(p);
    h[[1, 1]] -= I * (p.gamma1 / 2.0);
    h[[2, 2]] -= I * (p.gamma2 / 2.0);
    h
}

/// Internal Liouvillian as a 9x9 column-stacked superoperator.
pub fn internal_liouvillian(p: &SystemParams) -> SuperOperator {
    let mut l = SuperOperator::commutator(&internal_hamiltonian(p));
    for j in [1usize, 2] {
        let e = Level::excited(j);
        let g = p.gamma(j);
        let lower = transition(Level::G, e);
        l.add_scaled(&SuperOperator::sandwich(&lower, &linalg::dagger(&lower)), C64::new(g, 0.0));
        let proj = transition(e, e);
        l.add_scaled(&SuperOperator::pre(&proj), C64::new(-g / 2.0, 0.0));
        l.add_scaled(&SuperOperator::post(&proj), C64::new(-g / 2.0, 0.0));
    }
    l
}

#[derive(Clone, Debug)]
pub struct InternalSteadyState {
    pub rho: Array2<C64>,
    pub n_st: f64,
}

/// Closed-form stationary state of the internal dynamics.
pub fn internal_steady_state(p: &SystemParams) -> InternalSteadyState {
    let (g1, d1, o1) = (p.gamma1, p.delta1, p.omega1);
    let n_st = g1 * g1 + 4.0 * d1 * d1 + 2.0 * o1 * o1;
    let mut rho = Array2::zeros((N_LEVELS, N_LEVELS));
    rho[[1, 1]] = C64::new(o1 * o1 / n_st, 0.0);
    rho[[0, 0]] = C64::new((n_st - o1 * o1) / n_st, 0.0);
    rho[[1, 0]] = -C64::new(2.0 * d1, g1) * (o1 / n_st);
    rho[[0, 1]] = rho[[1, 0]].conj();
    InternalSteadyState { rho, n_st }
}

/// Label of an internal eigen-element.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InternalMode {
    Stationary,
    TlsReal,
    TlsPlus,
    TlsMinus,
    Decay,
    OnePlus,
    OneMinus,
    TwoPlus,
    TwoMinus,
}

impl InternalMode {
    pub const ALL: [InternalMode; 9] = [
        InternalMode::Stationary,
        InternalMode::TlsReal,
        InternalMode::TlsPlus,
        InternalMode::TlsMinus,
        InternalMode::Decay,
        InternalMode::OnePlus,
        InternalMode::OneMinus,
        InternalMode::TwoPlus,
        InternalMode::TwoMinus,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&m| m == self).unwrap_or(0)
    }

    pub fn name(self) -> &'static str {
        match self {
            InternalMode::Stationary => "stationary",
            InternalMode::TlsReal => "tls_0",
            InternalMode::TlsPlus => "tls_+",
            InternalMode::TlsMinus => "tls_-",
            InternalMode::Decay => "decay",
            InternalMode::OnePlus => "1+",
            InternalMode::OneMinus => "1-",
            InternalMode::TwoPlus => "2+",
            InternalMode::TwoMinus => "2-",
        }
    }
}

#[derive(Clone, Debug)]
pub struct InternalEigensystem {
    pub omega_plus: C64,
    pub omega_minus: C64,
    pub omega_2: C64,
    /// `[lambda_{1+}, lambda_{1-}]`.
    pub lambda_1: [C64; 2],
    /// `[lambda_{2+}, lambda_{2-}]`.
    pub lambda_2: [C64; 2],
    pub lambda_decay: C64,
    /// `[lambda_TLS^0, lambda_TLS^+, lambda_TLS^-]`.
    pub lambda_tls: [C64; 3],
    pub upsilon: f64,
    pub varsigma: C64,
    pub dressed: [DressedState; 2],
    pub steady: InternalSteadyState,
    /// Eigenvalues, right and left elements in [`InternalMode::ALL`] order.
    pub values: Vec<C64>,
    pub right: Vec<Array2<C64>>,
    pub left: Vec<Array2<C64>>,
}

impl InternalEigensystem {
    pub fn value(&self, m: InternalMode) -> C64 {
        self.values[m.index()]
    }

    /// `Tr{left_k right_l}`.
    pub fn pairing(&self, k: usize, l: usize) -> C64 {
        linalg::trace_product(&self.left[k], &self.right[l])
    }

    /// `sum_k right_k Tr{left_k X}`.
    pub fn reconstruct(&self, x: &Array2<C64>) -> Array2<C64> {
        let mut out = Array2::zeros((N_LEVELS, N_LEVELS));
        for k in 0..9 {
            let c = linalg::trace_product(&self.left[k], x);
            out.scaled_add(c, &self.right[k]);
        }
        out
    }
}

fn outer(ket: &[C64; 3], bra: &[C64; 3]) -> Array2<C64> {
    Array2::from_shape_fn((3, 3), |(i, j)| ket[i] * bra[j])
}

fn unit(level: usize) -> [C64; 3] {
    let mut v = [ZERO; 3];
    v[level] = ONE;
    v
}

fn conj3(v: &[C64; 3]) -> [C64; 3] {
    [v[0].conj(), v[1].conj(), v[2].conj()]
}

/// Vectorized indices of the `g-1` block.
const TLS_BLOCK: [usize; 4] = [0, 1, 3, 4];

/// All nine eigen-elements: closed forms for the `2-(g,1)` coherences, the
/// metastable decay and the steady state; the remaining two-level-subsystem
/// triple from a numerical eigensolve of the `g-1` block.
pub fn internal_eigensystem(p: &SystemParams) -> Result<InternalEigensystem> {
    if (p.gamma1 - 2.0 * p.gamma2).abs() < 1e-14 {
        return Err(Error::InvalidParameter("gamma1 = 2 gamma2 leaves the decay element undefined".into()));
    }
    let dressed = dressed_states(p);
    let (omega_plus, omega_minus) = (dressed[0].omega, dressed[1].omega);
    let omega_2 = omega2(p);
    let lambda_1 = [-I * (omega_plus - omega_2.conj()), -I * (omega_minus - omega_2.conj())];
    let lambda_2 = [-I * (omega_2 - omega_plus.conj()), -I * (omega_2 - omega_minus.conj())];
    let lambda_decay = C64::new(-p.gamma2, 0.0);
    let upsilon = (p.gamma1 - p.gamma2) / (p.gamma1 - 2.0 * p.gamma2);
    let varsigma = C64::new(p.omega1, 0.0) / C64::new(2.0 * p.delta1, p.gamma1 - 2.0 * p.gamma2);
    let steady = internal_steady_state(p);

    let lint = internal_liouvillian(p);
    let block = Array2::from_shape_fn((4, 4), |(a, b)| lint.data[[TLS_BLOCK[a], TLS_BLOCK[b]]]);
    let tls = EigenPairs::new(&block)?;
    let zero_mode = tls.smallest();
    let mut others: Vec<usize> = (0..4).filter(|&k| k != zero_mode).collect();
    others.sort_by(|&a, &b| tls.values[a].im.abs().total_cmp(&tls.values[b].im.abs()));
    let real_mode = others[0];
    let (mut plus, mut minus) = (others[1], others[2]);
    let (vp, vm) = (tls.values[plus], tls.values[minus]);
    if vp.im < vm.im || (vp.im == vm.im && vp.re < vm.re) {
        std::mem::swap(&mut plus, &mut minus);
    }
    let tls_modes = [real_mode, plus, minus];
    let lambda_tls = tls_modes.map(|k| tls.values[k]);

    let mut values = Vec::with_capacity(9);
    let mut right = Vec::with_capacity(9);
    let mut left = Vec::with_capacity(9);

    values.push(ZERO);
    right.push(steady.rho.clone());
    left.push(linalg::identity(3));

    for &k in &tls_modes {
        let lam = tls.values[k];
        let mut r = ndarray::Array1::zeros(9);
        let mut l = ndarray::Array1::zeros(9);
        for (a, &idx) in TLS_BLOCK.iter().enumerate() {
            r[idx] = tls.right[[a, k]];
            l[idx] = tls.left[[k, a]];
        }
        l[8] = l[0] * p.gamma2 / (lam + p.gamma2);
        values.push(lam);
        right.push(linalg::unvectorize(r.view(), 3));
        left.push(linalg::unvectorize(l.view(), 3).reversed_axes());
    }

    let s2 = varsigma.norm_sqr();
    let denom = upsilon + 2.0 * s2;
    let mut decay = transition(Level::E2, Level::E2);
    decay[[1, 1]] -= C64::new(s2 / denom, 0.0);
    decay[[0, 0]] -= C64::new((upsilon + s2) / denom, 0.0);
    decay[[1, 0]] += varsigma.conj() * (upsilon / denom);
    decay[[0, 1]] += varsigma * (upsilon / denom);
    values.push(lambda_decay);
    right.push(decay);
    left.push(transition(Level::E2, Level::E2));

    let e2 = unit(2);
    for (s, lam) in dressed.iter().zip(lambda_1) {
        values.push(lam);
        right.push(outer(&s.ket, &e2));
        left.push(outer(&e2, &s.dual));
    }
    for (s, lam) in dressed.iter().zip(lambda_2) {
        values.push(lam);
        right.push(outer(&e2, &conj3(&s.ket)));
        left.push(outer(&conj3(&s.dual), &e2));
    }

    for a in 0..9 {
        for b in a + 1..9 {
            if (values[a] - values[b]).norm() < DEGENERACY_TOL {
                return Err(Error::DegenerateInternal(a, b));
            }
        }
    }

    Ok(InternalEigensystem {
        omega_plus,
        omega_minus,
        omega_2,
        lambda_1,
        lambda_2,
        lambda_decay,
        lambda_tls,
        upsilon,
        varsigma,
        dressed,
        steady,
        values,
        right,
        left,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray_linalg::Eig;

    fn reference() -> SystemParams {
        SystemParams::reference()
    }

    #[test]
    fn uncoupled_limit() {
        let p = SystemParams { omega1: 0.0, ..reference() };
        let (wp, wm) = dressed_frequencies(&p);
        assert!((wp - C64::new(p.delta1, -p.gamma1 / 2.0)).norm() < 1e-14);
        assert!(wm.norm() < 1e-14);
        let rho = internal_steady_state(&p).rho;
        assert!(linalg::max_abs(&(rho - transition(Level::G, Level::G))) < 1e-15);
        assert_eq!(saturation(&p), 0.0);
    }

    #[test]
    fn vieta_and_dense_oracle() {
        let p = reference();
        let (wp, wm) = dressed_frequencies(&p);
        assert!((wp + wm - C64::new(p.delta1, -p.gamma1 / 2.0)).norm() < 1e-13);
        let h = effective_internal_hamiltonian(&p);
        let block = h.slice(ndarray::s![0..2, 0..2]).to_owned();
        let (w, _) = block.eig().unwrap();
        for target in [wp, wm] {
            let best = w.iter().map(|x| (x - target).norm()).fold(f64::MAX, f64::min);
            assert!(best < 1e-12);
        }
    }

    #[test]
    fn dressed_states_are_right_eigenvectors() {
        let p = reference();
        let h = effective_internal_hamiltonian(&p);
        for s in dressed_states(&p) {
            let v = ndarray::Array1::from(s.ket.to_vec());
            let hv = h.dot(&v);
            for i in 0..3 {
                assert!((hv[i] - s.omega * v[i]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn dual_basis_pairing() {
        let s = dressed_states(&reference());
        for a in 0..2 {
            for b in 0..2 {
                let pair: C64 = (0..3).map(|i| s[a].dual[i] * s[b].ket[i]).sum();
                let want = if a == b { ONE } else { ZERO };
                assert!((pair - want).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn steady_state_closed_form() {
        let p = reference();
        let st = internal_steady_state(&p);
        let s = saturation(&p);
        assert!((s - 3.125 / 72.0).abs() < 1e-15);
        assert!((st.rho[[1, 1]].re - 0.5 * s / (s + 1.0)).abs() < 1e-12);
        assert!((st.rho[[1, 1]].re - 0.0208).abs() < 1e-4);
        assert!((linalg::trace(&st.rho) - ONE).norm() < 1e-15);
        assert_eq!(st.rho[[2, 2]], ZERO);
        let l = internal_liouvillian(&p);
        assert!(linalg::max_abs(&l.apply(&st.rho)) < 1e-12);
    }

    #[test]
    fn saturation_scale_invariance() {
        let p = reference();
        let q = SystemParams { delta1: 2.0 * p.delta1, gamma1: 2.0 * p.gamma1, omega1: 2.0 * p.omega1, ..p.clone() };
        assert!((saturation(&p) - saturation(&q)).abs() < 1e-15);
    }

    #[test]
    fn eigensystem_matches_dense_eigensolve() {
        let p = reference();
        let es = internal_eigensystem(&p).unwrap();
        assert!((es.lambda_decay - C64::new(-0.015, 0.0)).norm() < 1e-15);
        let l = internal_liouvillian(&p);
        let (dense, _) = l.data.eig().unwrap();
        for v in &es.values {
            let best = dense.iter().map(|x| (x - v).norm()).fold(f64::MAX, f64::min);
            assert!(best < 1e-10, "eigenvalue {v} not found");
        }
        for k in 0..9 {
            let lr = l.apply(&es.right[k]);
            assert!(linalg::max_abs(&(lr - es.right[k].mapv(|z| z * es.values[k]))) < 1e-10, "right {k}");
        }
    }

    #[test]
    fn left_elements_are_left_eigenvectors() {
        let p = reference();
        let es = internal_eigensystem(&p).unwrap();
        let l = internal_liouvillian(&p);
        for k in 0..9 {
            let row = linalg::vectorize(&es.left[k].t().to_owned());
            let lrow = row.dot(&l.data);
            for c in 0..9 {
                assert!((lrow[c] - es.values[k] * row[c]).norm() < 1e-10, "left {k}");
            }
        }
    }

    #[test]
    fn biorthonormal_and_complete() {
        let es = internal_eigensystem(&reference()).unwrap();
        for a in 0..9 {
            for b in 0..9 {
                let want = if a == b { ONE } else { ZERO };
                assert!((es.pairing(a, b) - want).norm() < 1e-10, "pair {a} {b}");
            }
        }
        let x = Array2::from_shape_fn((3, 3), |(i, j)| C64::new(i as f64 + 0.5, j as f64 - 1.0));
        assert!(linalg::max_abs(&(es.reconstruct(&x) - &x)) < 1e-10);
    }

    #[test]
    fn mode_labels() {
        let es = internal_eigensystem(&reference()).unwrap();
        assert!((es.value(InternalMode::OneMinus) - es.lambda_1[1]).norm() < 1e-15);
        assert!(es.value(InternalMode::TlsPlus).im > 0.0);
        assert!((es.value(InternalMode::TlsPlus) - es.value(InternalMode::TlsMinus).conj()).norm() < 1e-10);
        assert!(es.value(InternalMode::TlsReal).im.abs() < 1e-10);
        assert!((es.value(InternalMode::OneMinus) - C64::new(-0.13477, 1.00291)).norm() < 1e-4);
    }

    #[test]
    fn rejects_special_ratio() {
        let p = SystemParams { gamma1: 0.03, ..reference() };
        assert!(internal_eigensystem(&p).is_err());
    }
}
