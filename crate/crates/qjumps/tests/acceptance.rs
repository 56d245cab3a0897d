//! Acceptance report: one PASS/FAIL line per criterion, followed by the
//! spectral invariants. Always exits 0; the verdicts are in the output.

use std::time::Instant;

use qjumps::cooling::{cooling_rates, rate_equation_distribution, CoolingRates};
use qjumps::hilbert::number;
use qjumps::internal::{internal_eigensystem, internal_liouvillian, InternalMode};
use qjumps::jumps::{
    ks_distance, log_grid, perturbative_waiting_time, post_detection_state, simulate_trajectory, waiting_time_with,
    EffectiveHamiltonian, PeriodKind, SplitRule,
};
use qjumps::lamb_dicke::{expand, MotionalState};
use qjumps::linalg::EigenPairs;
use qjumps::liouville::{
    angular_quadrature, build_liouvillian, correlation_spectrum, dipole_operator, second_moment, spectral_decomposition,
    steady_state, SpectralDecomposition, SystemParams, DEFAULT_QUAD_ORDER,
};
use qjumps::spectrum::{
    angle_dependence_report, central_peak_transition1, half_width, transition2_signals, Component, DipoleOperator,
    PoleOrder, SpectralEngine,
};

const ETAS: [f64; 3] = [0.02, 0.05, 0.1];

struct Report {
    passed: usize,
    failed: usize,
}

impl Report {
    fn line(&mut self, id: &str, ok: bool, text: String) {
        if ok {
            self.passed += 1;
        } else {
            self.failed += 1;
        }
        println!("{} {id}: {text}", if ok { "PASS" } else { "FAIL" });
    }

    fn info(&self, id: &str, text: String) {
        println!("INFO {id}: {text}");
    }
}

struct Context {
    p: SystemParams,
    rates: CoolingRates,
    engine: SpectralEngine,
    exact: Option<(SpectralDecomposition, qjumps::hilbert::QOperator)>,
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let (x, y): (Vec<f64>, Vec<f64>) = x.iter().zip(y).map(|(a, b)| (a.ln(), b.abs().ln())).unzip();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn linear(min: f64, max: f64, points: usize) -> Vec<f64> {
    (0..points).map(|k| min + (max - min) * k as f64 / (points - 1) as f64).collect()
}

fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn bright_time(p: &SystemParams, n_bar: f64) -> Option<f64> {
    let grid = log_grid(1e-3, 40.0 / p.gamma2, 800);
    waiting_time_with(p, n_bar, &grid, SplitRule::Crossover).ok()?.t_b
}

fn criterion1(r: &mut Report, c: &mut Context) {
    let n_bar = c.rates.n_bar;
    let l = build_liouvillian(&c.p).unwrap();
    let rho = steady_state(&l).unwrap();
    let n_full = rho.trace_with(&number(c.p.dims())).re;
    let ok_rate = (n_bar - 0.3).abs() <= 0.05;
    let ok_full = rel(n_full, n_bar) <= 0.10;
    r.line(
        "C1 mean phonon number",
        ok_rate && ok_full,
        format!(
            "rate equations <n> = {n_bar:.5} (0.3 +/- 0.05: {}), full Liouvillian <n> = {n_full:.5}, deviation {:.1}% (limit 10%)",
            if ok_rate { "ok" } else { "out" },
            100.0 * rel(n_full, n_bar)
        ),
    );
    let decomp = spectral_decomposition(&l).unwrap();
    c.exact = Some((decomp, rho));
}

fn criteria2to4(r: &mut Report, c: &Context) {
    let p = &c.p;
    let n_bar = c.rates.n_bar;
    let grid = log_grid(1e-3, 40.0 / p.gamma2, 800);
    let wt = waiting_time_with(p, n_bar, &grid, SplitRule::Crossover).unwrap();

    let t_d = wt.t_d.unwrap_or(f64::NAN);
    r.line(
        "C2 dark period",
        rel(t_d, 1.0 / p.gamma2) <= 0.10,
        format!("T_D = {t_d:.3}, 1/gamma2 = {:.3}, deviation {:.1}% (limit 10%)", 1.0 / p.gamma2, 100.0 * rel(t_d, 1.0 / p.gamma2)),
    );

    let t_b = wt.t_b.unwrap_or(f64::NAN);
    let t_b_analytic = wt.analytic.as_ref().map_or(f64::NAN, |a| a.t_b);
    let ok_value = rel(t_b, t_b_analytic) <= 0.25;
    let eta2 = [0.03, 0.05, 0.07];
    let tb_eta: Vec<f64> = eta2.iter().map(|&e| bright_time(&p.with_eta(p.eta1, e), n_bar).unwrap_or(f64::NAN)).collect();
    let phi2 = [0.0, 0.35, 0.7];
    let tb_phi: Vec<f64> =
        phi2.iter().map(|&f| bright_time(&SystemParams { phi2: f, ..p.clone() }, n_bar).unwrap_or(f64::NAN)).collect();
    let nbars = [0.2, 0.3, 0.45];
    let tb_n: Vec<f64> = nbars.iter().map(|&n| bright_time(p, n).unwrap_or(f64::NAN)).collect();
    let cosines: Vec<f64> = phi2.iter().map(|f: &f64| f.cos()).collect();
    let (k_eta, k_phi, k_n) = (slope(&eta2, &tb_eta), slope(&cosines, &tb_phi), slope(&nbars, &tb_n));
    let ok_scaling = (k_eta + 2.0).abs() <= 0.15 && (k_phi + 2.0).abs() <= 0.15 && (k_n + 1.0).abs() <= 0.15;
    r.line(
        "C3 bright period",
        ok_value && ok_scaling,
        format!(
            "T_B = {t_b:.1} vs analytic {t_b_analytic:.1} ({:.1}%, limit 25%); exponents eta2 {k_eta:.3} (-2), cos(phi2) {k_phi:.3} (-2), <n> {k_n:.3} (-1), limit +/-0.15",
            100.0 * rel(t_b, t_b_analytic)
        ),
    );

    let window = log_grid(1e-3, 3.0 / p.gamma2, 400);
    let exact = waiting_time_with(p, n_bar, &window, SplitRule::Crossover).unwrap();
    let pert = perturbative_waiting_time(p, n_bar, &window);
    let span = exact.p.iter().map(|x| x.ln().abs()).fold(0.0, f64::max);
    let dev = exact.p.iter().zip(&pert.p).map(|(a, b)| (a.ln() - b.ln()).abs()).fold(0.0, f64::max) / span;
    r.line(
        "C4 waiting-time overlay",
        dev <= 0.15,
        format!("max |ln P_exact - ln P_pert| / max |ln P_exact| on [0, 3/gamma2] = {:.1}% (limit 15%)", 100.0 * dev),
    );
}

fn criteria5and6(r: &mut Report, c: &Context) {
    let p = &c.p;
    let n_bar = c.rates.n_bar;
    let grid = linear(-0.15, 0.15, 6001);
    let s = c.engine.spectrum(&DipoleOperator::new(p, 1), &grid, PoleOrder::Lowest).unwrap();
    let hwhm = half_width(&grid, &s.total).unwrap_or(f64::NAN);
    let cp = central_peak_transition1(p, n_bar, &grid);
    let numeric_peak = s.total.iter().cloned().fold(f64::MIN, f64::max);
    let peak_nps = cp.curve_small_s.iter().cloned().fold(f64::MIN, f64::max);
    let peak_full = cp.curve.iter().cloned().fold(f64::MIN, f64::max);
    let ok_width = rel(hwhm, p.gamma2) <= 0.10;
    let ok_height = rel(peak_nps, numeric_peak) < 0.15;
    r.line(
        "C5 central peak",
        ok_width && ok_height,
        format!(
            "HWHM = {hwhm:.6} vs gamma2 = {} ({:.1}%, limit 10%); peak height analytic {peak_nps:.5} vs numerical {numeric_peak:.5} ({:.1}%, limit 15%)",
            p.gamma2,
            100.0 * rel(hwhm, p.gamma2),
            100.0 * rel(peak_nps, numeric_peak)
        ),
    );
    r.info(
        "C5 central peak",
        format!(
            "unexpanded weight form: height {peak_full:.5} ({:.1}%); group weight numerical {:.4e}, analytic {:.4e}",
            100.0 * rel(peak_full, numeric_peak),
            s.group_weight((InternalMode::Decay.index(), 0)),
            cp.weight
        ),
    );

    let s2 = c.engine.spectrum(&DipoleOperator::new(p, 2), &[0.0], PoleOrder::Lowest).unwrap();
    let (red, blue) = (s2.weight(Component::SidebandRed), s2.weight(Component::SidebandBlue));
    let t2 = transition2_signals(p, n_bar, &[0.0]).unwrap();
    let half_w = c.rates.w_total / 2.0;
    let identity = rel(t2.gamma_sb, half_w);
    r.line(
        "C6 transition-2 sidebands",
        blue / red > 30.0 && identity <= 1e-12,
        format!(
            "blue/red = {:.2} (limit > 30); gamma_sb = {:.10e} vs W/2 = {half_w:.10e}, relative {identity:.1e} (limit 1e-12)",
            blue / red,
            t2.gamma_sb
        ),
    );
    let lead = s2
        .lines
        .iter()
        .filter(|l| l.component == Component::SidebandBlue)
        .max_by(|a, b| a.line.weight.norm().total_cmp(&b.line.weight.norm()))
        .unwrap();
    r.info(
        "C6 transition-2 sidebands",
        format!(
            "perturbative pole width {:.10e}, relative to W/2 {:.2e} (Fock truncation at n_fock = {})",
            -lead.line.lambda.re,
            rel(-lead.line.lambda.re, half_w),
            p.n_fock
        ),
    );
}

fn criterion7(r: &mut Report, c: &Context) {
    let report = angle_dependence_report(&c.p, c.rates.n_bar, 10, 8).unwrap();
    r.line(
        "C7 angle laws",
        report.r2_central_peak > 0.999 && report.r2_transition2 > 0.999 && report.psi_variation < 1e-8,
        format!(
            "R^2 central peak {:.6}, transition 2 {:.6} (limit > 0.999); psi variation {:.1e} (limit 1e-8)",
            report.r2_central_peak, report.r2_transition2, report.psi_variation
        ),
    );
}

fn criterion8(r: &mut Report, c: &Context) {
    let p = &c.p;
    let n_bar = c.rates.n_bar;
    let grid = log_grid(1e-3, 40.0 / p.gamma2, 800);
    let tau = waiting_time_with(p, n_bar, &grid, SplitRule::Crossover).unwrap().tau.unwrap();
    let rec = simulate_trajectory(p, n_bar, 7.5e5, tau, 2024).unwrap();
    let dark = rec.durations(PeriodKind::Dark);
    let (mean, se) = mean_se(&dark);
    let heff = EffectiveHamiltonian::new(p).unwrap();
    let rho0 = post_detection_state(n_bar, p.n_fock);
    let gaps = rec.gaps();
    let ks = ks_distance(&gaps, |x| heff.survival_curve(&rho0, x));
    let target = 1.0 / p.gamma2;
    r.line(
        "C8 Monte Carlo",
        dark.len() >= 500 && (mean - target).abs() <= 2.0 * se && ks < 0.05,
        format!(
            "{} dark periods (>= 500), mean {mean:.2} +/- {se:.2} vs 1/gamma2 = {target:.2} ({:.2} SE, limit 2); KS distance {ks:.4} over {} gaps (limit 0.05)",
            dark.len(),
            (mean - target).abs() / se,
            gaps.len()
        ),
    );
}

fn criterion9(r: &mut Report, c: &Context) {
    let p = &c.p;
    let l = build_liouvillian(p).unwrap();
    let trace = l.trace_defect() / l.norm();

    let li = internal_liouvillian(p);
    let internal_re = EigenPairs::new(&li.data).unwrap().values.iter().map(|z| z.re).fold(f64::MIN, f64::max);
    let (decomp, _) = c.exact.as_ref().unwrap();
    let full_re = (0..decomp.len()).map(|k| decomp.eigenvalue(k).re).fold(f64::MIN, f64::max);
    let heff_im = EffectiveHamiltonian::new(p).unwrap().pairs.values.iter().map(|z| z.im).fold(f64::MIN, f64::max);
    let ok_re = internal_re <= 1e-10 * li.norm() && full_re <= 1e-10 * l.norm() && heff_im <= 1e-10;

    let es = internal_eigensystem(p).unwrap();
    let mut bio: f64 = 0.0;
    for k in 0..9 {
        for m in 0..9 {
            bio = bio.max((es.pairing(k, m) - if k == m { 1.0 } else { 0.0 }).norm());
        }
    }

    let w2 = (second_moment(DEFAULT_QUAD_ORDER).unwrap() - 0.4).abs();

    let norms: Vec<(f64, f64)> = ETAS
        .iter()
        .map(|&e| {
            let ld = expand(&SystemParams { n_fock: 8, ..p.with_eta(e, e) }).unwrap();
            (ld.l1().norm(), ld.l2().norm())
        })
        .collect();
    let k1 = slope(&ETAS, &norms.iter().map(|n| n.0).collect::<Vec<_>>());
    let k2 = slope(&ETAS, &norms.iter().map(|n| n.1).collect::<Vec<_>>());
    let s2_weights: Vec<Vec<f64>> = ETAS
        .iter()
        .map(|&e| {
            let q = SystemParams { n_fock: 10, ..p.with_eta(e, e) };
            let engine = SpectralEngine::new(&q, MotionalState::Thermal(c.rates.n_bar)).unwrap();
            let lines = engine
                .lines(&[DipoleOperator::new(&q, 1), DipoleOperator::new(&q, 2)], PoleOrder::Lowest)
                .unwrap();
            let w = |j: usize, comp: Component| {
                lines[j].iter().filter(|l| l.component == comp).map(|l| l.line.weight.re).sum::<f64>()
            };
            vec![
                w(0, Component::SidebandRed),
                w(0, Component::SidebandBlue),
                w(0, Component::InelasticSecond),
                w(1, Component::SidebandRed),
                w(1, Component::SidebandBlue),
                w(1, Component::InelasticSecond),
            ]
        })
        .collect();
    let k_s2: Vec<f64> =
        (0..6).map(|i| slope(&ETAS, &s2_weights.iter().map(|w| w[i]).collect::<Vec<_>>())).collect();
    let worst_s2 = k_s2.iter().map(|k| (k - 2.0).abs()).fold(0.0, f64::max);
    let ok_eta = (k1 - 1.0).abs() <= 0.1 && (k2 - 2.0).abs() <= 0.1 && worst_s2 <= 0.1;

    let dist = rate_equation_distribution(&c.rates, 60);
    let balance = (0..59)
        .map(|n| {
            let up = (n as f64 + 1.0) * c.rates.heating() * dist[n];
            let down = (n as f64 + 1.0) * c.rates.cooling() * dist[n + 1];
            (up - down).abs() / up
        })
        .fold(0.0, f64::max);

    r.line(
        "C9 property suites",
        trace < 1e-10 && ok_re && bio <= 1e-10 && w2 <= 1e-12 && ok_eta && balance <= 1e-12,
        format!(
            "trace defect {trace:.1e}; max Re lambda internal {internal_re:.1e}, full {full_re:.1e}, max Im H_eff {heff_im:.1e}; biorthonormality {bio:.1e} (1e-10); |W2 - 2/5| {w2:.1e}; exponents L1 {k1:.3}, L2 {k2:.3}, S2 worst |k-2| {worst_s2:.3} (0.1); detailed balance {balance:.1e}"
        ),
    );
}

fn spectral_invariants(r: &mut Report, c: &Context) {
    let p = &c.p;
    let (decomp, rho) = c.exact.as_ref().unwrap();
    let grid = linear(-2.0, 2.0, 4001);
    let exact = correlation_spectrum(decomp, &dipole_operator(p, 1), rho, &grid);
    let pert = c.engine.spectrum(&DipoleOperator::new(p, 1), &grid, PoleOrder::Lowest).unwrap();
    let mut worst: f64 = 0.0;
    let mut at = 0.0;
    for (i, &w) in grid.iter().enumerate() {
        if w.abs() < 3.0 * p.gamma2 {
            continue;
        }
        let local = grid
            .iter()
            .zip(&exact.curve)
            .filter(|(x, _)| (**x - w).abs() <= 0.5)
            .map(|(_, y)| *y)
            .fold(0.0, f64::max);
        let dev = (exact.curve[i] - pert.total[i]).abs() / local;
        if dev > worst {
            worst = dev;
            at = w;
        }
    }
    r.line(
        "S1 exact vs perturbative spectrum",
        worst <= 0.10,
        format!(
            "transition 1, |S_exact - (S0 + S2)| / local max (+/-0.5 nu) over [-2, 2] outside +/-3 gamma2: worst {:.1}% at {at:+.3} (limit 10%)",
            100.0 * worst
        ),
    );

    let rates = &c.rates;
    let quad = angular_quadrature(16).unwrap();
    let dipoles: Vec<DipoleOperator> = quad.iter().map(|&(u, _)| DipoleOperator::at_angle(p, 1, u.acos())).collect();
    let lines = c.engine.lines(&dipoles, PoleOrder::Lowest).unwrap();
    let flux = |comp: Component| {
        p.gamma1
            * lines
                .iter()
                .zip(&quad)
                .map(|(ls, &(_, w))| w * ls.iter().filter(|l| l.component == comp).map(|l| l.line.weight.re).sum::<f64>())
                .sum::<f64>()
    };
    let red = flux(Component::SidebandRed);
    let blue = flux(Component::SidebandBlue);
    let heating = rates.a1_plus * (rates.n_bar + 1.0);
    let cooling = rates.a1_minus * rates.n_bar;
    let identity = (rates.w1 * (rates.n1 - rates.n_bar) + rates.w2_rate * (rates.n2 - rates.n_bar)).abs()
        / (rates.w_total * rates.n_bar);
    r.line(
        "S2 sideband detailed balance",
        rel(red, heating) <= 0.10 && rel(blue, cooling) <= 0.10 && identity <= 1e-12,
        format!(
            "transition-1 red flux {red:.4e} vs A1+(<n>+1) = {heating:.4e} ({:.1}%), blue {blue:.4e} vs A1-<n> = {cooling:.4e} ({:.1}%), limit 10%; W1(n1-<n>) + W2(n2-<n>) = {identity:.1e}",
            100.0 * rel(red, heating),
            100.0 * rel(blue, cooling)
        ),
    );
}

fn main() {
    let start = Instant::now();
    let p = SystemParams::reference();
    let rates = cooling_rates(&p).unwrap();
    let engine = SpectralEngine::new(&p, MotionalState::Thermal(rates.n_bar)).unwrap();
    let mut c = Context { p, rates, engine, exact: None };
    let mut r = Report { passed: 0, failed: 0 };

    criterion1(&mut r, &mut c);
    criteria2to4(&mut r, &c);
    criteria5and6(&mut r, &c);
    criterion7(&mut r, &c);
    criterion8(&mut r, &c);
    criterion9(&mut r, &c);
    spectral_invariants(&mut r, &c);

    println!(
        "acceptance: {} passed, {} failed ({:.1} s)",
        r.passed,
        r.failed,
        start.elapsed().as_secs_f64()
    );
}
