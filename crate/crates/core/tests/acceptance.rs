//! Acceptance criteria. Each test prints one `ACCEPTANCE <id> PASS|FAIL|SKIP`
//! line to stderr (uncaptured) and then asserts.

use std::io::Write;
use std::sync::{Arc, Mutex, MutexGuard, OnceLock};
use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dsem_core::dsem::*;
use dsem_core::fci::*;
use dsem_core::fcidump::read_fcidump;
use dsem_core::gf2::*;
use dsem_core::grid::*;
use dsem_core::hamiltonian::*;
use dsem_core::pipeline::BuiltinSystem;
use dsem_core::qubit::*;

/// Criteria run one at a time: the DZ solves need most of the memory budget.
static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(id: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "ACCEPTANCE {id} {verdict}: {detail}");
}

struct Parent {
    sys: MolecularSystem,
    st: GF2State,
}

fn parent(system: BuiltinSystem) -> &'static Parent {
    static CACHE: OnceLock<Mutex<Vec<(BuiltinSystem, &'static Parent)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(Vec::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    if let Some((_, p)) = guard.iter().find(|(s, _)| *s == system) {
        return p;
    }
    let sys = system.build().unwrap();
    let st = gf2_scf(&sys, &Gf2Options::default()).unwrap();
    let p: &'static Parent = Box::leak(Box::new(Parent { sys, st }));
    guard.push((system, p));
    p
}

fn electronic(e_total: f64, sys: &MolecularSystem) -> f64 {
    e_total - sys.e_nuc
}

fn fci_ground(sys: &MolecularSystem, mode: SolveMode) -> f64 {
    let h = FciHamiltonian::from_system(sys).unwrap();
    solve_spectrum(&h, sys.n_electrons, mode).unwrap().ground_energy()
}

fn gf2_of(sys: &MolecularSystem, p: &Parent, v_tilde: &TwoBodyTensor) -> DsemReport {
    let fic = fictitious_for(sys, p.st.gamma.matrix(), v_tilde).unwrap();
    let sigma = Gf2Solver::default().self_energy(&fic, &p.st.g_tau.grid).unwrap();
    dsem_evaluate(sys, &p.st, &sigma).unwrap()
}

#[test]
fn criterion_01_fci_ring_sto6g() {
    let _g = serial();
    let t0 = Instant::now();
    let sys = BuiltinSystem::H6RingSto6g.build().unwrap();
    let e = electronic(fci_ground(&sys, SolveMode::Auto), &sys);
    let secs = t0.elapsed().as_secs_f64();
    let pass = (e - -9.348592).abs() <= 5e-4 && secs < 30.0;
    report("1", pass, &format!("H6 ring STO-6G E_FCI = {e:.6} (target -9.348592 +- 5e-4), {secs:.1} s (< 30 s)"));
    assert!(pass);
}

#[test]
fn criterion_02_fci_ring_dz_lanczos() {
    let _g = serial();
    let t0 = Instant::now();
    let sys = BuiltinSystem::H6RingDz.build().unwrap();
    let e = electronic(fci_ground(&sys, SolveMode::GroundLanczos), &sys);
    let secs = t0.elapsed().as_secs_f64();
    let pass = (e - -9.411284).abs() <= 2e-3 && secs < 300.0;
    report("2", pass, &format!("H6 ring DZ Lanczos E_FCI = {e:.6} (target -9.411284 +- 2e-3), {secs:.1} s (< 300 s)"));
    assert!(pass);
}

fn onsite_values(p: &Parent) -> Vec<f64> {
    let s1 = sigma1_extract(&p.st.sigma_tau);
    ueff_onsite(s1.matrix(), p.st.gamma.matrix()).unwrap()
}

#[test]
fn criterion_03_onsite_mapping() {
    let _g = serial();
    let sto = parent(BuiltinSystem::H6RingSto6g);
    let u_sto = onsite_values(sto);
    let sto_ok = u_sto.iter().all(|u| (u - 0.598096).abs() <= 5e-3);
    let sto_below = u_sto.iter().enumerate().all(|(i, u)| *u < sto.sys.v.get(i, i, i, i));

    let dz = parent(BuiltinSystem::H6RingDz);
    let u_dz = onsite_values(dz);
    // Orbitals alternate 1s-like (large) and 2s-like (small) per atom.
    let (mut hi, mut lo): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
    for (i, u) in u_dz.iter().enumerate() {
        if dz.sys.v.get(i, i, i, i) > 0.8 {
            hi.push(*u);
        } else {
            lo.push(*u);
        }
    }
    let dz_ok = hi.len() == 6
        && lo.len() == 6
        && hi.iter().all(|u| (u - 1.001197).abs() <= 1e-2)
        && lo.iter().all(|u| (u - 0.424057).abs() <= 1e-2);
    let dz_below = u_dz.iter().enumerate().all(|(i, u)| *u < dz.sys.v.get(i, i, i, i));
    let bare_sto = sto.sys.v.get(0, 0, 0, 0);
    let bare_dz: Vec<f64> = (0..2).map(|i| dz.sys.v.get(i, i, i, i)).collect();
    let pass = sto_ok && dz_ok && sto_below && dz_below;
    report(
        "3",
        pass,
        &format!(
            "STO-6G v~ = {:.6} (0.598096 +- 5e-3); DZ pair ({:.6}, {:.6}) ((1.001197, 0.424057) +- 1e-2); \
             v~ < bare: {} (bare {:.6} / {:.6} / {:.6})",
            u_sto[0],
            hi.first().copied().unwrap_or(f64::NAN),
            lo.first().copied().unwrap_or(f64::NAN),
            sto_below && dz_below,
            bare_sto,
            bare_dz[0],
            bare_dz[1]
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_04_dsem_p1_fci() {
    let _g = serial();
    let p = parent(BuiltinSystem::H6RingSto6g);
    let v_tilde = onsite_tensor(&onsite_values(p));
    let fic = fictitious_for(&p.sys, p.st.gamma.matrix(), &v_tilde).unwrap();
    let sigma = FciSolver::default().self_energy(&fic, &p.st.g_tau.grid).unwrap();
    let rep = dsem_evaluate(&p.sys, &p.st, &sigma).unwrap();
    let e_fci = fci_ground(&p.sys, SolveMode::Auto);
    let ratio = rep.e_corr / (e_fci - p.st.e_hf);
    let e = rep.e_electronic;
    let pass = (e - -9.350271).abs() <= 2e-3 && (0.9..=1.1).contains(&ratio);
    report("4", pass, &format!("FCI(p1) E = {e:.6} (-9.350271 +- 2e-3); correlation {:.1}% of FCI (90-110%)", 100.0 * ratio));
    assert!(pass);
}

#[test]
fn criterion_05_gf2_ladder_ring() {
    let _g = serial();
    let p = parent(BuiltinSystem::H6RingSto6g);
    let e_v = electronic(p.st.e_total, &p.sys);
    let ctx = FitContext::from_state(&p.st, &p.sys.v, FitOptions::default().stride).unwrap();
    let ladder = fit_ladder(&SchemeKind::ALL, &p.sys, &ctx, &FitOptions::default()).unwrap();
    let norms: Vec<f64> = ladder.iter().map(|(_, f)| f.residual_norm).collect();
    let e2 = gf2_of(&p.sys, p, &ladder[1].1.v_tilde).e_electronic;
    let e3 = gf2_of(&p.sys, p, &ladder[2].1.v_tilde).e_electronic;
    let ordered = norms[0] >= norms[1] && norms[1] >= norms[2];
    let pass = (e_v - -9.32597).abs() <= 2e-3 && (e2 - e_v).abs() <= 1e-3 && (e3 - e_v).abs() <= 5e-4 && ordered;
    report(
        "5",
        pass,
        &format!(
            "GF2(v) = {e_v:.6} (-9.32597 +- 2e-3); |GF2(p2)-GF2(v)| = {:.2e} (<= 1e-3); |GF2(p3)-GF2(v)| = {:.2e} (<= 5e-4); \
             residuals {:.3e} >= {:.3e} >= {:.3e}: {ordered}",
            (e2 - e_v).abs(),
            (e3 - e_v).abs(),
            norms[0],
            norms[1],
            norms[2]
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_06_chain_dz_trend() {
    let _g = serial();
    let p = parent(BuiltinSystem::H6ChainDz);
    let e_v = electronic(p.st.e_total, &p.sys);
    let ctx = FitContext::from_state(&p.st, &p.sys.v, FitOptions::default().stride).unwrap();
    let ladder = fit_ladder(&SchemeKind::ALL, &p.sys, &ctx, &FitOptions::default()).unwrap();
    let e2 = gf2_of(&p.sys, p, &ladder[1].1.v_tilde).e_electronic;
    let e3 = gf2_of(&p.sys, p, &ladder[2].1.v_tilde).e_electronic;
    let (d2, d3) = ((e2 - e_v).abs(), (e3 - e_v).abs());
    let pass = d3 <= 1e-3 && d2 <= 5e-3;
    report(
        "6",
        pass,
        &format!("H6 chain DZ GF2(v) = {e_v:.6}; |GF2(p3)-GF2(v)| = {:.2} mEh (<= 1); |GF2(p2)-GF2(v)| = {:.2} mEh (<= 5)", d3 * 1e3, d2 * 1e3),
    );
    assert!(pass);
}

#[test]
fn criterion_07_fcidump_systems() {
    let _g = serial();
    let cases = [("H2O/DZ", "DSEM_H2O_DZ_FCIDUMP", 5e-3), ("Be2/6-31G", "DSEM_BE2_631G_FCIDUMP", 3e-3)];
    let available: Vec<_> = cases.iter().filter_map(|(n, var, tol)| std::env::var(var).ok().map(|p| (*n, p, *tol))).collect();
    if available.is_empty() {
        let _ = writeln!(
            std::io::stderr(),
            "ACCEPTANCE 7 SKIP: no FCIDUMP supplied (set DSEM_H2O_DZ_FCIDUMP and/or DSEM_BE2_631G_FCIDUMP)"
        );
        return;
    }
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, path, tol) in &available {
        let sys = read_fcidump(path).unwrap();
        let st = gf2_scf(&sys, &Gf2Options::default()).unwrap();
        let p = Parent { sys, st };
        let ctx = FitContext::from_state(&p.st, &p.sys.v, FitOptions::default().stride).unwrap();
        let ladder = fit_ladder(&SchemeKind::ALL, &p.sys, &ctx, &FitOptions::default()).unwrap();
        let e3 = gf2_of(&p.sys, &p, &ladder[2].1.v_tilde).e_total;
        let gap = (e3 - p.st.e_total).abs();
        pass &= gap <= *tol;
        parts.push(format!("{name}: |GF2(p3)-GF2(v)| = {:.2} mEh (<= {:.0})", gap * 1e3, tol * 1e3));
    }
    if available.len() < cases.len() {
        parts.push("other dump not supplied".into());
    }
    report("7", pass, &parts.join("; "));
    assert!(pass);
}

fn counts(h: &DMatrix<f64>, v: &TwoBodyTensor) -> [GateCountReport; 2] {
    Encoding::ALL.map(|enc| count_trotter_gates(&encode_hamiltonian(h, v, 0.0, enc).unwrap(), enc).unwrap())
}

fn le(a: &GateCountReport, b: &GateCountReport) -> bool {
    a.sqg <= b.sqg && a.cnot <= b.cnot
}

fn lt(a: &GateCountReport, b: &GateCountReport) -> bool {
    a.sqg < b.sqg && a.cnot < b.cnot
}

#[test]
fn criterion_08_gate_counts() {
    let _g = serial();
    let p = parent(BuiltinSystem::H6RingSto6g);
    let ctx = FitContext::from_state(&p.st, &p.sys.v, FitOptions::default().stride).unwrap();
    let ladder = fit_ladder(&SchemeKind::ALL, &p.sys, &ctx, &FitOptions::default()).unwrap();
    let fic: Vec<[GateCountReport; 2]> = ladder
        .iter()
        .map(|(_, f)| {
            let h = fictitious_for(&p.sys, p.st.gamma.matrix(), &f.v_tilde).unwrap();
            counts(h.f_tilde.matrix(), &h.v_tilde)
        })
        .collect();
    let sao = counts(p.sys.t.matrix(), &p.sys.v);
    let hf = rhf(&p.sys).unwrap();
    let mo_sys = p.sys.rotate(&hf.coefficients, BasisFrame::Mo).unwrap();
    let mo = counts(mo_sys.t.matrix(), &mo_sys.v);
    let jw_p1 = fic[0][0];
    let band = (150..=650).contains(&jw_p1.sqg) && (280..=1200).contains(&jw_p1.cnot);
    let ratio_mo = mo[0].cnot as f64 / jw_p1.cnot as f64;
    let ratio_sao = sao[0].cnot as f64 / jw_p1.cnot as f64;
    let ordering = (0..2).all(|e| {
        le(&fic[0][e], &fic[1][e]) && le(&fic[1][e], &fic[2][e]) && lt(&fic[2][e], &mo[e]) && lt(&fic[2][e], &sao[e])
    });
    let pass = band && ratio_mo.min(ratio_sao) >= 8.0 && ordering;
    report(
        "8",
        pass,
        &format!(
            "JW H(p1) SQG {} CNOT {} (band [150, 650] / [280, 1200]); full/p1 CNOT ratio {:.1} (MO) {:.1} (SAO) (>= 8); \
             p1 <= p2 <= p3 < full for JW and BK: {ordering} (JW CNOT {} / {} / {} / {})",
            jw_p1.sqg, jw_p1.cnot, ratio_mo, ratio_sao, fic[0][0].cnot, fic[1][0].cnot, fic[2][0].cnot, mo[0].cnot
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 9

fn random_sym(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    (&a + a.transpose()) * 0.5
}

fn random_v(n: usize, rng: &mut ChaCha8Rng) -> TwoBodyTensor {
    let mut v = TwoBodyTensor::zeros(n);
    for (i, j, k, l) in v.unique_indices() {
        v.set(i, j, k, l, rng.random_range(-0.5..0.5)).unwrap();
    }
    v
}

fn cmax(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn dyson_round_trip() -> f64 {
    let grid = ImagGrid::new(GridParams { beta: 20.0, n_tau: 200, n_omega: 600 }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let f = random_sym(3, &mut rng);
    let s = DMatrix::identity(3, 3) + random_sym(3, &mut rng) * 0.1;
    let mut sigma = MatsubaraFunction::zeros(grid.clone(), 3);
    for (w, om) in grid.omega().iter().enumerate() {
        let a = random_sym(3, &mut rng);
        sigma.data[w] = a.map(|x| Complex64::new(0.0, -x.abs())) / Complex64::new(1.0 + om, 0.0);
    }
    let g = dyson(&f, &s, &sigma, 0.2).unwrap();
    let back = sigma_from_dyson(&f, &s, &g, 0.2).unwrap();
    back.iter().zip(&sigma.data).map(|(a, b)| cmax(&(a - b))).fold(0.0, f64::max)
}

/// `-exp(-eps tau) / (1 + exp(-beta eps))`, overflow-safe.
fn free_tau(eps: f64, tau: f64, beta: f64) -> f64 {
    if eps >= 0.0 {
        -(-eps * tau).exp() / (1.0 + (-beta * eps).exp())
    } else {
        -(eps * (beta - tau)).exp() / (1.0 + (beta * eps).exp())
    }
}

fn fourier_round_trip() -> f64 {
    let grid = ImagGrid::new(GridParams::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let n = 3;
    let modes: Vec<(f64, DMatrix<f64>)> = (0..4).map(|_| (rng.random_range(-1.5..1.5), random_sym(n, &mut rng))).collect();
    let data = grid
        .tau()
        .iter()
        .map(|&t| modes.iter().fold(DMatrix::zeros(n, n), |acc, (e, a)| acc + a * free_tau(*e, t, grid.beta())))
        .collect();
    let f = TauFunction { grid: grid.clone(), data };
    omega_to_tau(&tau_to_omega(&f).unwrap()).unwrap().max_abs_diff(&f)
}

fn naive_sigma(g: &DMatrix<f64>, gm: &DMatrix<f64>, v: &TwoBodyTensor) -> DMatrix<f64> {
    let n = g.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        let mut acc = 0.0;
        for k in 0..n {
            for l in 0..n {
                for m in 0..n {
                    for nn in 0..n {
                        for p in 0..n {
                            for q in 0..n {
                                acc += g[(k, l)]
                                    * g[(m, nn)]
                                    * gm[(p, q)]
                                    * v.get(i, m, q, k)
                                    * (2.0 * v.get(l, p, nn, j) - v.get(nn, p, l, j));
                            }
                        }
                    }
                }
            }
        }
        -acc
    })
}

fn kernel_vs_naive() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut worst: f64 = 0.0;
    for n in [2, 3] {
        let v = random_v(n, &mut rng);
        let g = random_sym(n, &mut rng);
        let gm = random_sym(n, &mut rng);
        let kernel = SecondOrderKernel::new(&v);
        worst = worst.max((kernel.evaluate(&g, &gm) - naive_sigma(&g, &gm, &v)).amax());
    }
    worst
}

/// First-iteration `E_2b` (Galitskii-Migdal on the HF propagator) minus the MP2
/// oracle. With second-order Sigma the Galitskii-Migdal functional counts the
/// MP2 energy twice.
fn mp2_gap() -> f64 {
    let sys = BuiltinSystem::H2Sto6g.build().unwrap();
    let hf = rhf(&sys).unwrap();
    let mo = sys.v.rotate(&hf.coefficients).unwrap();
    let e = &hf.orbital_energies;
    let n_occ = sys.n_electrons / 2;
    let n = e.len();
    let mut mp2 = 0.0;
    for i in 0..n_occ {
        for j in 0..n_occ {
            for a in n_occ..n {
                for b in n_occ..n {
                    let (iajb, ibja) = (mo.get(i, a, j, b), mo.get(i, b, j, a));
                    mp2 += iajb * (2.0 * iajb - ibja) / (e[i] + e[j] - e[a] - e[b]);
                }
            }
        }
    }
    let grid = ImagGrid::new(GridParams::default()).unwrap();
    let s = sys.s.matrix();
    let g0 = evaluate_g0(&hf.fock, s, midgap_mu(&hf.fock, s, sys.n_electrons), &grid).unwrap();
    let sigma = tau_to_omega(&gf2_sigma(&omega_to_tau(&g0).unwrap(), &sys.v).unwrap()).unwrap();
    (energy_2b_gm(&g0, &sigma).unwrap() - 2.0 * mp2).abs()
}

fn jw_bk_spectrum_gap() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let h = random_sym(2, &mut rng);
    let v = random_v(2, &mut rng);
    let ham = FciHamiltonian::new(&h, &v, 0.0).unwrap();
    let mut reference = Vec::new();
    for na in 0..=2 {
        for nb in 0..=2 {
            let space = DeterminantSpace::new(2, na, nb).unwrap();
            let m = ham.dense_matrix(&space, &SectorTables::new(&space));
            reference.extend(SymmetricEigen::new(m).eigenvalues.iter().copied());
        }
    }
    reference.sort_by(f64::total_cmp);
    let mut worst: f64 = 0.0;
    for enc in Encoding::ALL {
        let m = dense_matrix(&encode_hamiltonian(&h, &v, 0.0, enc).unwrap()).unwrap();
        let mut e: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        e.sort_by(f64::total_cmp);
        assert_eq!(e.len(), 16);
        worst = e.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    worst
}

/// Half-filled dimer, hopping `t < 0`, on-site `u`; bonding/antibonding poles
/// rotated back to sites.
fn dimer_exact(t: f64, u: f64, z: Complex64) -> DMatrix<Complex64> {
    let at = t.abs();
    let c = (u * u / 4.0 + 4.0 * t * t).sqrt();
    let e0 = u / 2.0 - c;
    let (a, b) = (u / 2.0 - 2.0 * at, u / 2.0);
    let norm = (b * b + (e0 - a).powi(2)).sqrt();
    let (u2, v2) = ((b / norm).powi(2), ((e0 - a) / norm).powi(2));
    let mu = u / 2.0;
    let gb = u2 / (z - (e0 + at) + mu) + v2 / (z - (u + at - e0) + mu);
    let ga = v2 / (z - (e0 - at) + mu) + u2 / (z - (u - at - e0) + mu);
    let (d, o) = ((gb + ga) * 0.5, (gb - ga) * 0.5);
    DMatrix::from_row_slice(2, 2, &[d, o, o, d])
}

fn hubbard_gap() -> f64 {
    let grid = ImagGrid::new(GridParams { beta: 100.0, n_tau: 801, n_omega: 1500 }).unwrap();
    let h = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0]);
    let mut v = TwoBodyTensor::zeros(2);
    v.set(0, 0, 0, 0, 4.0).unwrap();
    v.set(1, 1, 1, 1, 4.0).unwrap();
    let ham = FciHamiltonian::new(&h, &v, 0.0).unwrap();
    let sol = solve_spectrum(&ham, 2, SolveMode::FullSpectrum).unwrap();
    let gf = fci_greens_function(&ham, &sol, &grid, Some(2.0)).unwrap();
    grid.omega()
        .iter()
        .zip(&gf.g.data)
        .map(|(w, gw)| cmax(&(gw - dimer_exact(-1.0, 4.0, Complex64::new(0.0, *w)))))
        .fold(0.0, f64::max)
}

fn inverse_crime_gap() -> f64 {
    let n = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let grid = ImagGrid::new(GridParams { beta: 20.0, n_tau: 201, n_omega: 400 }).unwrap();
    let mut f = random_sym(n, &mut rng) * 0.3;
    for i in 0..n {
        f[(i, i)] += -1.0 + 0.6 * i as f64;
    }
    let g_tau = omega_to_tau(&evaluate_g0(&f, &DMatrix::identity(n, n), 0.0, &grid).unwrap()).unwrap();
    let scheme = scheme_classes(SchemeKind::P2, n);
    let truth: Vec<f64> = scheme
        .classes
        .iter()
        .map(|c| match c.group {
            IntegralGroup::OnSite => rng.random_range(0.4..0.8),
            _ => rng.random_range(0.05..0.3),
        })
        .collect();
    let ctx = FitContext::with_target(&g_tau, &scheme.scatter(&truth).unwrap(), 4).unwrap();
    // The objective is even in v~, so the start is taken near the generator.
    let start: Vec<f64> = truth.iter().map(|x| x * (1.0 + rng.random_range(-0.2..0.2))).collect();
    let bare = scheme.scatter(&start).unwrap();
    let fit = fit_effective_integrals(&scheme, &ctx, &bare, None, &FitOptions::default()).unwrap();
    fit.params.iter().zip(&truth).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

fn ftilde_cancellation() -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let n = 4;
    let t = OneBodyTensor::from_matrix(random_sym(n, &mut rng)).unwrap();
    let v = random_v(n, &mut rng);
    let gamma = random_sym(n, &mut rng) + DMatrix::identity(n, n);
    assemble_ftilde(&t, &v, &v, &gamma).unwrap().matrix() == t.matrix()
}

fn second_pass_shift() -> f64 {
    let p = parent(BuiltinSystem::H6RingSto6g);
    let scheme = scheme_classes(SchemeKind::P1, p.sys.n_orbitals()).pooled(p.sys.t.matrix(), &p.sys.v).unwrap();
    let v_tilde = onsite_tensor(&onsite_values(p));
    let fic = fictitious_for(&p.sys, p.st.gamma.matrix(), &v_tilde).unwrap();
    let mut solver = FciSolver::default();
    let sigma = solver.self_energy(&fic, &p.st.g_tau.grid).unwrap();
    let first = dsem_evaluate(&p.sys, &p.st, &sigma).unwrap();
    let passes = dsem_iterate(
        &p.sys,
        p.st.e_hf,
        &scheme,
        OnsiteMapping::Moment,
        first,
        &mut solver,
        &FitOptions::default(),
        1,
    )
    .unwrap();
    (passes[1].e_total - passes[0].e_total).abs()
}

#[test]
fn criterion_09_property_suites() {
    let _g = serial();
    let dyson = dyson_round_trip();
    let fourier = fourier_round_trip();
    let kernel = kernel_vs_naive();
    let mp2 = mp2_gap();
    let spectrum = jw_bk_spectrum_gap();
    let hubbard = hubbard_gap();
    let crime = inverse_crime_gap();
    let exact = ftilde_cancellation();
    let shift = second_pass_shift();
    let checks = [
        dyson <= 1e-10,
        fourier <= 1e-6,
        kernel <= 1e-12,
        mp2 <= 1e-4,
        spectrum <= 1e-10,
        hubbard <= 1e-8,
        crime <= 1e-6,
        exact,
        shift <= 1e-3,
    ];
    let pass = checks.iter().all(|&c| c);
    report(
        "9",
        pass,
        &format!(
            "Dyson {dyson:.1e} (<= 1e-10); Fourier {fourier:.1e} (<= 1e-6); kernel {kernel:.1e} (<= 1e-12); \
             MP2 {mp2:.1e} (<= 1e-4); JW/BK spectrum {spectrum:.1e} (<= 1e-10); Hubbard G {hubbard:.1e} (<= 1e-8); \
             inverse crime {crime:.1e} (<= 1e-6); F~ cancellation exact: {exact}; second pass {:.3} mEh (<= 1)",
            shift * 1e3
        ),
    );
    assert!(pass);
}

// --------------------------------------------------------------- criterion 10

fn max_im(f: &MatsubaraFunction, i: usize, j: usize) -> f64 {
    f.data.iter().map(|m| m[(i, j)].im.abs()).fold(0.0, f64::max)
}

fn max_im_diff(a: &MatsubaraFunction, b: &MatsubaraFunction, i: usize, j: usize) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| (x[(i, j)].im - y[(i, j)].im).abs()).fold(0.0, f64::max)
}

#[test]
fn criterion_10_self_energy_shape() {
    let _g = serial();
    let p = parent(BuiltinSystem::H6ChainDz);
    let grid: Arc<ImagGrid> = p.st.g_tau.grid.clone();
    let v_tilde = onsite_tensor(&onsite_values(p));
    let fic = fictitious_for(&p.sys, p.st.gamma.matrix(), &v_tilde).unwrap();
    let sigma_p1 = FciSolver::default().self_energy(&fic, &grid).unwrap();
    let h = FciHamiltonian::from_system(&p.sys).unwrap();
    let sol = solve_spectrum(&h, p.sys.n_electrons, SolveMode::Auto).unwrap();
    let gf = fci_greens_function(&h, &sol, &grid, None).unwrap();
    let sigma_full = extract_sigma(&gf, p.sys.t.matrix(), &p.sys.v).unwrap();
    let off: Vec<f64> = [(0, 1), (0, 3)].iter().map(|&(i, j)| max_im(&sigma_p1, i, j) / max_im(&sigma_full, i, j)).collect();
    let diag: Vec<f64> =
        [(0, 0), (1, 1)].iter().map(|&(i, i2)| max_im_diff(&sigma_p1, &sigma_full, i, i2) / max_im(&sigma_full, i, i2)).collect();
    let pass = off.iter().all(|&r| r < 0.1) && diag.iter().all(|&r| r <= 0.3);
    report(
        "10",
        pass,
        &format!(
            "H6 chain DZ, on-site FCI vs all-integral FCI Im Sigma: off-diagonal max ratio 01 {:.3}, 03 {:.3} (< 0.10); \
             diagonal max-norm deviation 00 {:.3}, 11 {:.3} (<= 0.30)",
            off[0], off[1], diag[0], diag[1]
        ),
    );
    assert!(pass);
}
