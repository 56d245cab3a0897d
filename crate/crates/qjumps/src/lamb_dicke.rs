//! Lamb-Dicke expansion `L = L0 + L1 + L2` and the zero-order eigenbasis in
//! which the perturbative spectra and steady state are assembled.
//!
//! The zero-order basis elements are `R_k kron |n><m|` with `R_k` the internal
//! right eigen-elements, flattened as `k * n^2 + n * n_fock + m`. Their
//! zero-order eigenvalue is `lambda_k + i (m - n)`, so that the subspace of a
//! basis element is labelled by `(k, l)` with `l = m - n`.

use std::collections::BTreeMap;

use ndarray::{s, Array1, Array2};
use num_complex::Complex64 as C64;
use sprs::{CsMat, TriMat};

use crate::error::{Error, Result};
use crate::hilbert::{self, transition, Level, QOperator, N_LEVELS};
use crate::internal::{internal_eigensystem, internal_liouvillian, InternalEigensystem};
use crate::liouville::{second_moment, SuperOperator, SystemParams, DEFAULT_QUAD_ORDER};
use crate::linalg::{self, EigenPairs, I, ONE, ZERO};

/// Zero-order eigenvalues closer than this are treated as degenerate.
pub const RESONANCE_TOL: f64 = 1e-6;

/// Threshold on the norm of `P0 L1 P0` for the first-order term to vanish.
pub const FIRST_ORDER_TOL: f64 = 1e-9;

/// Expansion pieces; motional operators enter through `X = a + a^dagger`.
#[derive(Clone, Debug)]
pub struct LDExpansion {
    pub params: SystemParams,
    /// Internal Liouvillian on the 3x3 space.
    pub l_internal: SuperOperator,
    /// First derivative of the laser coupling, multiplying `X`.
    pub v1: Array2<C64>,
    /// Second-order coupling, multiplying `X^2` (running wave only).
    pub v2: Array2<C64>,
    /// `W2 gamma_j eta_j^2 / 2` for `j = 1, 2`.
    pub diffusion: [f64; 2],
    pub w2: f64,
}

pub fn expand(p: &SystemParams) -> Result<LDExpansion> {
    p.validate()?;
    let (k1, k2) = (p.kappa(1), p.kappa(2));
    let up1 = transition(Level::E1, Level::G);
    let down1 = transition(Level::G, Level::E1);
    let pair2 = transition(Level::E2, Level::G) + &transition(Level::G, Level::E2);
    let v1 = (&up1 - &down1).mapv(|z| z * I * (p.omega1 / 2.0) * k1) + pair2.mapv(|z| z * (p.omega2 / 2.0) * k2);
    let v2 = (&up1 + &down1).mapv(|z| z * (p.omega1 / 2.0) * (-k1 * k1 / 2.0));
    let w2 = second_moment(DEFAULT_QUAD_ORDER)?;
    let diffusion = [1usize, 2].map(|j| w2 * p.gamma(j) * p.eta(j) * p.eta(j) / 2.0);
    Ok(LDExpansion { params: p.clone(), l_internal: internal_liouvillian(p), v1, v2, diffusion, w2 })
}

impl LDExpansion {
    fn x(&self) -> Array2<C64> {
        linalg::to_complex(&hilbert::fock_position(self.params.n_fock))
    }

    fn full(&self, atom: &Array2<C64>, fock: &Array2<C64>) -> Array2<C64> {
        linalg::kron(atom, fock)
    }

    /// Zero-order generator on the composite space.
    pub fn l0(&self) -> SuperOperator {
        let n = self.params.n_fock;
        let mut h = self.full(&linalg::identity(N_LEVELS), &hilbert::fock_number(n));
        h += &self.full(&crate::internal::internal_hamiltonian(&self.params), &linalg::identity(n));
        let mut l = SuperOperator::commutator(&h);
        for j in [1usize, 2] {
            let g = self.params.gamma(j);
            let e = Level::excited(j);
            let lower = self.full(&transition(Level::G, e), &linalg::identity(n));
            l.add_scaled(&SuperOperator::sandwich(&lower, &linalg::dagger(&lower)), C64::new(g, 0.0));
            let proj = self.full(&transition(e, e), &linalg::identity(n));
            l.add_scaled(&SuperOperator::pre(&proj), C64::new(-g / 2.0, 0.0));
            l.add_scaled(&SuperOperator::post(&proj), C64::new(-g / 2.0, 0.0));
        }
        l
    }

    /// `-i [V1 X, .]`.
    pub fn l1(&self) -> SuperOperator {
        SuperOperator::commutator(&self.full(&self.v1, &self.x()))
    }

    /// Recoil diffusion `sum_j D_j |g><j| (2 X r X - X^2 r - r X^2) |j><g|`.
    pub fn k2(&self) -> SuperOperator {
        let n = self.params.n_fock;
        let x = self.x();
        let x2 = x.dot(&x);
        let mut k = SuperOperator::zeros(N_LEVELS * n);
        for (idx, j) in [1usize, 2].into_iter().enumerate() {
            let lower = transition(Level::G, Level::excited(j));
            let raise = linalg::dagger(&lower);
            let c = C64::new(self.diffusion[idx], 0.0);
            k.add_scaled(&SuperOperator::sandwich(&self.full(&lower, &x), &self.full(&raise, &x)), c * 2.0);
            k.add_scaled(&SuperOperator::sandwich(&self.full(&lower, &x2), &self.full(&raise, &linalg::identity(n))), -c);
            k.add_scaled(&SuperOperator::sandwich(&self.full(&lower, &linalg::identity(n)), &self.full(&raise, &x2)), -c);
        }
        k
    }

    /// `-i [V2 X^2, .] + K2`.
    pub fn l2(&self) -> SuperOperator {
        let x = self.x();
        let mut l = SuperOperator::commutator(&self.full(&self.v2, &x.dot(&x)));
        l.add_scaled(&self.k2(), ONE);
        l
    }
}

/// Eigenbasis of `L0`: internal eigen-elements times Fock dyads.
#[derive(Clone, Debug)]
pub struct ZeroOrderBasis {
    pub n_fock: usize,
    pub internal: InternalEigensystem,
}

impl ZeroOrderBasis {
    pub fn new(p: &SystemParams) -> Result<Self> {
        Ok(Self { n_fock: p.n_fock, internal: internal_eigensystem(p)? })
    }

    pub fn len(&self) -> usize {
        9 * self.n_fock * self.n_fock
    }

    pub fn is_empty(&self) -> bool {
        self.n_fock == 0
    }

    pub fn index(&self, k: usize, n: usize, m: usize) -> usize {
        (k * self.n_fock + n) * self.n_fock + m
    }

    /// `(k, n, m)` of a flat index.
    pub fn split(&self, idx: usize) -> (usize, usize, usize) {
        let nf = self.n_fock;
        (idx / (nf * nf), (idx / nf) % nf, idx % nf)
    }

    pub fn group_of(&self, idx: usize) -> (usize, i64) {
        let (k, n, m) = self.split(idx);
        (k, m as i64 - n as i64)
    }

    pub fn lambda0(&self, idx: usize) -> C64 {
        let (k, n, m) = self.split(idx);
        self.internal.values[k] + I * (m as f64 - n as f64)
    }

    /// Coordinates of a composite operator in the zero-order basis.
    pub fn to_basis(&self, y: &Array2<C64>) -> Array1<C64> {
        let nf = self.n_fock;
        let mut c = Array1::zeros(self.len());
        for k in 0..9 {
            let lk = &self.internal.left[k];
            let mut acc = Array2::<C64>::zeros((nf, nf));
            for i in 0..N_LEVELS {
                for j in 0..N_LEVELS {
                    let w = lk[[j, i]];
                    if w != ZERO {
                        acc.scaled_add(w, &y.slice(s![i * nf..(i + 1) * nf, j * nf..(j + 1) * nf]));
                    }
                }
            }
            c.slice_mut(s![k * nf * nf..(k + 1) * nf * nf]).assign(&Array1::from_iter(acc.iter().copied()));
        }
        c
    }

    /// Composite operator with the given zero-order coordinates.
    pub fn to_operator(&self, c: &Array1<C64>) -> Array2<C64> {
        let nf = self.n_fock;
        let mut y = Array2::zeros((N_LEVELS * nf, N_LEVELS * nf));
        for k in 0..9 {
            let block = c.slice(s![k * nf * nf..(k + 1) * nf * nf]);
            if block.iter().all(|z| *z == ZERO) {
                continue;
            }
            let f = Array2::from_shape_fn((nf, nf), |(n, m)| block[n * nf + m]);
            y += &linalg::kron(&self.internal.right[k], &f);
        }
        y
    }

    /// Zero-order projector onto the subspace `(k, l)`.
    pub fn project(&self, group: (usize, i64), x: &Array2<C64>) -> Array2<C64> {
        let mut c = self.to_basis(x);
        for idx in 0..c.len() {
            if self.group_of(idx) != group {
                c[idx] = ZERO;
            }
        }
        self.to_operator(&c)
    }
}

/// `P0` for internal mode `k` and external index `l` applied to `x`.
pub fn project_zero_order(p: &SystemParams, k: usize, ell: i64, x: &QOperator) -> Result<QOperator> {
    let basis = ZeroOrderBasis::new(p)?;
    QOperator::new(x.dims, basis.project((k, ell), &x.data))
}

/// Internal coefficient tables `Tr{L_k' A R_k}` etc. indexed `[k', k]`.
fn coefficient_table(es: &InternalEigensystem, f: impl Fn(&Array2<C64>) -> Array2<C64>) -> Array2<C64> {
    Array2::from_shape_fn((9, 9), |(kp, k)| linalg::trace_product(&es.left[kp], &f(&es.right[k])))
}

/// Selects the starting point of the steady-state expansion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MotionalState {
    /// Stationary element of the perturbative `(0, 0)` subspace.
    Stationary,
    /// `rho_st kron mu_th(n_bar)`.
    Thermal(f64),
}

/// Perturbatively corrected eigen-element of the full Liouvillian.
#[derive(Clone, Debug)]
pub struct PerturbativeMode {
    pub group: (usize, i64),
    pub lambda0: C64,
    /// Second-order shift from the group matrix.
    pub mu: C64,
    /// `[R0, R1, R2]` in zero-order coordinates.
    pub right: [Array1<C64>; 3],
    /// `[L0, L1, L2]` in zero-order coordinates.
    pub left: [Array1<C64>; 3],
    /// Second-order normalization `L1 . R1`.
    pub n2: C64,
}

/// Rayleigh-Schroedinger perturbation theory around `L0` in the zero-order
/// basis, with `L1` and `L2` as sparse matrices.
#[derive(Clone, Debug)]
pub struct PerturbationTheory {
    pub basis: ZeroOrderBasis,
    pub lambda0: Vec<C64>,
    pub groups: BTreeMap<(usize, i64), Vec<usize>>,
    pub l1: CsMat<C64>,
    pub l2: CsMat<C64>,
}

fn spmv(m: &CsMat<C64>, x: &Array1<C64>) -> Array1<C64> {
    let mut y = Array1::zeros(m.rows());
    for (row, vec) in m.outer_iterator().enumerate() {
        let mut acc = ZERO;
        for (col, &v) in vec.iter() {
            acc += v * x[col];
        }
        y[row] = acc;
    }
    y
}

fn vspm(x: &Array1<C64>, m: &CsMat<C64>) -> Array1<C64> {
    let mut y = Array1::zeros(m.cols());
    for (row, vec) in m.outer_iterator().enumerate() {
        let xr = x[row];
        if xr == ZERO {
            continue;
        }
        for (col, &v) in vec.iter() {
            y[col] += xr * v;
        }
    }
    y
}

impl PerturbationTheory {
    pub fn new(p: &SystemParams) -> Result<Self> {
        let ld = expand(p)?;
        let basis = ZeroOrderBasis::new(p)?;
        let nf = p.n_fock;
        let es = &basis.internal;
        let x = hilbert::fock_position(nf);
        let x2 = x.dot(&x);

        let a1 = coefficient_table(es, |r| ld.v1.dot(r));
        let b1 = coefficient_table(es, |r| r.dot(&ld.v1));
        let a2 = coefficient_table(es, |r| ld.v2.dot(r));
        let b2 = coefficient_table(es, |r| r.dot(&ld.v2));
        let jump: Vec<Array2<C64>> = [1usize, 2]
            .iter()
            .map(|&j| {
                let e = Level::excited(j).index();
                Array2::from_shape_fn((9, 9), |(kp, k)| es.left[kp][[0, 0]] * es.right[k][[e, e]] * ld.diffusion[j - 1])
            })
            .collect();

        let dim = basis.len();
        let mut t1 = TriMat::new((dim, dim));
        let mut t2 = TriMat::new((dim, dim));
        let nz = |z: C64| z.norm() > 1e-300;
        for kp in 0..9 {
            for k in 0..9 {
                let (ca, cb, cc, cd) = (a1[[kp, k]], b1[[kp, k]], a2[[kp, k]], b2[[kp, k]]);
                let ce = jump[0][[kp, k]] + jump[1][[kp, k]];
                for n in 0..nf {
                    for m in 0..nf {
                        let col = basis.index(k, n, m);
                        for np in 0..nf {
                            let (xn, x2n) = (x[[np, n]], x2[[np, n]]);
                            if xn != 0.0 && nz(ca) {
                                t1.add_triplet(basis.index(kp, np, m), col, -I * ca * xn);
                            }
                            if x2n != 0.0 {
                                let v = -I * cc * x2n - ce * x2n;
                                if nz(v) {
                                    t2.add_triplet(basis.index(kp, np, m), col, v);
                                }
                            }
                        }
                        for mp in 0..nf {
                            let (xm, x2m) = (x[[m, mp]], x2[[m, mp]]);
                            if xm != 0.0 && nz(cb) {
                                t1.add_triplet(basis.index(kp, n, mp), col, I * cb * xm);
                            }
                            if x2m != 0.0 {
                                let v = I * cd * x2m - ce * x2m;
                                if nz(v) {
                                    t2.add_triplet(basis.index(kp, n, mp), col, v);
                                }
                            }
                        }
                        if nz(ce) {
                            for np in 0..nf {
                                if x[[np, n]] == 0.0 {
                                    continue;
                                }
                                for mp in 0..nf {
                                    if x[[m, mp]] != 0.0 {
                                        t2.add_triplet(basis.index(kp, np, mp), col, ce * 2.0 * x[[np, n]] * x[[m, mp]]);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }

        let lambda0: Vec<C64> = (0..dim).map(|i| basis.lambda0(i)).collect();
        let mut groups: BTreeMap<(usize, i64), Vec<usize>> = BTreeMap::new();
        for i in 0..dim {
            groups.entry(basis.group_of(i)).or_default().push(i);
        }
        Ok(Self { basis, lambda0, groups, l1: t1.to_csr(), l2: t2.to_csr() })
    }

    pub fn stationary_group(&self) -> (usize, i64) {
        (0, 0)
    }

    /// Reduced resolvent `1 / (lambda0_G - lambda0_b)` outside the group.
    pub fn resolvent(&self, group: (usize, i64)) -> Result<Array1<C64>> {
        let members = self.groups.get(&group).ok_or_else(|| Error::InvalidParameter(format!("no subspace {group:?}")))?;
        let lam = self.lambda0[members[0]];
        let mut s = Array1::zeros(self.lambda0.len());
        for (b, &l) in self.lambda0.iter().enumerate() {
            let g = self.basis.group_of(b);
            if g == group {
                continue;
            }
            let gap = lam - l;
            if gap.norm() < RESONANCE_TOL {
                return Err(Error::Resonance(group, g, gap.norm()));
            }
            s[b] = ONE / gap;
        }
        Ok(s)
    }

    /// Effective second-order generator `L2 + L1 S L1` on one subspace.
    pub fn group_matrix(&self, group: (usize, i64), s: &Array1<C64>) -> Array2<C64> {
        let members = &self.groups[&group];
        let dim = self.lambda0.len();
        let mut out = Array2::zeros((members.len(), members.len()));
        for (c, &col) in members.iter().enumerate() {
            let mut e = Array1::zeros(dim);
            e[col] = ONE;
            let first = spmv(&self.l1, &e) * s;
            let second = spmv(&self.l1, &first) + spmv(&self.l2, &e);
            for (r, &row) in members.iter().enumerate() {
                out[[r, c]] = second[row];
            }
        }
        out
    }

    fn embed(&self, members: &[usize], v: ndarray::ArrayView1<C64>) -> Array1<C64> {
        let mut out = Array1::zeros(self.lambda0.len());
        for (a, &i) in members.iter().enumerate() {
            out[i] = v[a];
        }
        out
    }

    /// All perturbatively corrected modes of one zero-order subspace.
    pub fn group_modes(&self, group: (usize, i64)) -> Result<Vec<PerturbativeMode>> {
        let s = self.resolvent(group)?;
        let members = &self.groups[&group];
        let pairs = EigenPairs::new(&self.group_matrix(group, &s))?;
        let lambda0 = self.lambda0[members[0]];
        let mut modes = Vec::with_capacity(members.len());
        for k in 0..members.len() {
            let r0 = self.embed(members, pairs.right.column(k));
            let l0 = self.embed(members, pairs.left.row(k));
            let r1 = spmv(&self.l1, &r0) * &s;
            let l1 = vspm(&l0, &self.l1) * &s;
            let r2 = (spmv(&self.l2, &r0) + spmv(&self.l1, &r1)) * &s;
            let l2 = (vspm(&l0, &self.l2) + vspm(&l1, &self.l1)) * &s;
            let n2 = linalg::dot(l1.view(), r1.view());
            modes.push(PerturbativeMode {
                group,
                lambda0,
                mu: pairs.values[k],
                right: [r0, r1, r2],
                left: [l0, l1, l2],
                n2,
            });
        }
        Ok(modes)
    }

    /// Trace of a zero-order coordinate vector.
    pub fn trace(&self, c: &Array1<C64>) -> C64 {
        let nf = self.basis.n_fock;
        (0..nf).map(|n| c[self.basis.index(0, n, n)]).sum()
    }

    /// `[rho0, rho1, rho2]` of the steady state in zero-order coordinates.
    pub fn steady_state_expansion(&self, start: MotionalState) -> Result<[Array1<C64>; 3]> {
        let group = self.stationary_group();
        let s = self.resolvent(group)?;
        let rho0 = match start {
            MotionalState::Stationary => {
                let members = &self.groups[&group];
                let pairs = EigenPairs::new(&self.group_matrix(group, &s))?;
                let r = self.embed(members, pairs.right.column(pairs.smallest()));
                let tr = self.trace(&r);
                r.mapv(|z| z / tr)
            }
            MotionalState::Thermal(n_bar) => {
                let pn = crate::cooling::thermal_distribution(n_bar, self.basis.n_fock);
                let mut r = Array1::zeros(self.lambda0.len());
                for (n, &w) in pn.iter().enumerate() {
                    r[self.basis.index(0, n, n)] = C64::new(w, 0.0);
                }
                r
            }
        };
        let rho1 = spmv(&self.l1, &rho0) * &s;
        let rho2 = (spmv(&self.l2, &rho0) + spmv(&self.l1, &rho1)) * &s;
        Ok([rho0, rho1, rho2])
    }

    pub fn apply_l1(&self, c: &Array1<C64>) -> Array1<C64> {
        spmv(&self.l1, c)
    }

    pub fn apply_l2(&self, c: &Array1<C64>) -> Array1<C64> {
        spmv(&self.l2, c)
    }

    /// Largest entry of `P0 L1 P0` over the zero-order eigenvalue clusters.
    pub fn first_order_coupling(&self) -> f64 {
        let mut order: Vec<usize> = (0..self.lambda0.len()).collect();
        order.sort_by(|&a, &b| {
            self.lambda0[a].re.total_cmp(&self.lambda0[b].re).then(self.lambda0[a].im.total_cmp(&self.lambda0[b].im))
        });
        let mut cluster = vec![0usize; order.len()];
        let mut next = 0;
        for (pos, &i) in order.iter().enumerate() {
            let mut assigned = None;
            for &j in order[..pos].iter().rev() {
                if (self.lambda0[i].re - self.lambda0[j].re).abs() >= RESONANCE_TOL {
                    break;
                }
                if (self.lambda0[i] - self.lambda0[j]).norm() < RESONANCE_TOL {
                    assigned = Some(cluster[j]);
                    break;
                }
            }
            cluster[i] = assigned.unwrap_or_else(|| {
                next += 1;
                next
            });
        }
        let mut worst: f64 = 0.0;
        for (row, vec) in self.l1.outer_iterator().enumerate() {
            for (col, v) in vec.iter() {
                if cluster[row] == cluster[col] {
                    worst = worst.max(v.norm());
                }
            }
        }
        worst
    }
}

/// True when `P0 L1 P0` vanishes on every zero-order eigenvalue subspace.
pub fn first_order_vanishing_check(p: &SystemParams) -> bool {
    match PerturbationTheory::new(p) {
        Ok(pt) => pt.first_order_coupling() < FIRST_ORDER_TOL,
        Err(_) => false,
    }
}
