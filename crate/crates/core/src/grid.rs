//! Imaginary-time / Matsubara grids, matrix-valued Green's-function
//! containers and the Fourier transforms between them.
//!
//! The forward transform integrates a not-a-knot cubic spline of `f(tau)`
//! against `exp(i w tau)` exactly on every interval. The backward transform is
//! a truncated Matsubara sum with the first three high-frequency moments
//! subtracted and added back analytically.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{cmax, gemm, invert_complex};

pub const DEFAULT_BETA: f64 = 100.0;
pub const DEFAULT_N_TAU: usize = 600;
pub const DEFAULT_N_OMEGA: usize = 3000;
/// Length scale (1/hartree) below which the tau mesh is roughly uniform.
const TAU_CLUSTER_SCALE: f64 = 0.3;
/// Length scale (1/hartree) above which the tau spacing stops growing.
const TAU_SATURATION_SCALE: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub beta: f64,
    pub n_tau: usize,
    pub n_omega: usize,
}

impl Default for GridParams {
    fn default() -> Self {
        GridParams { beta: DEFAULT_BETA, n_tau: DEFAULT_N_TAU, n_omega: DEFAULT_N_OMEGA }
    }
}

/// Fermionic imaginary-axis grids plus precomputed transform kernels.
pub struct ImagGrid {
    beta: f64,
    tau: Vec<f64>,
    omega: Vec<f64>,
    // Forward kernels, row-major n_omega x n_tau: F = P f + Q M (M = spline second derivatives).
    p_re: Vec<f64>,
    p_im: Vec<f64>,
    q_re: Vec<f64>,
    q_im: Vec<f64>,
    // Backward kernels, row-major n_tau x n_omega.
    cos: Vec<f64>,
    sin: Vec<f64>,
    // Thomas-algorithm factors for the reduced spline system.
    spline_diag: Vec<f64>,
    spline_lower: Vec<f64>,
    spline_upper: Vec<f64>,
    // One-sided derivative weights at tau = 0 and tau = beta (points counted
    // inwards from each end), for first and second derivatives.
    end_weights: [[Vec<f64>; 2]; 2],
}

impl std::fmt::Debug for ImagGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ImagGrid")
            .field("beta", &self.beta)
            .field("n_tau", &self.tau.len())
            .field("n_omega", &self.omega.len())
            .finish()
    }
}

/// `int_0^h s^m exp(i w s) ds` for m = 0..3.
fn interval_moments(w: f64, h: f64) -> [Complex64; 4] {
    let x = w * h;
    let mut out = [Complex64::new(0.0, 0.0); 4];
    if x.abs() < 1.0 {
        let ix = Complex64::new(0.0, x);
        for (m, o) in out.iter_mut().enumerate() {
            let mut term = Complex64::new(1.0, 0.0);
            let mut sum = Complex64::new(0.0, 0.0);
            for j in 0..40 {
                if j > 0 {
                    term = term * ix / j as f64;
                }
                let add = term / (m + j + 1) as f64;
                sum += add;
                if add.norm() < 1e-18 {
                    break;
                }
            }
            *o = sum * h.powi(m as i32 + 1);
        }
    } else {
        let iw = Complex64::new(0.0, w);
        let e = Complex64::new(x.cos(), x.sin());
        out[0] = (e - 1.0) / iw;
        for m in 1..4 {
            out[m] = (e * h.powi(m as i32) - out[m - 1] * m as f64) / iw;
        }
    }
    out
}

const END_STENCIL: usize = 7;

/// Finite-difference weights at `x0` on arbitrary nodes for derivative orders
/// 0..=max_order (Fornberg's recursion).
fn fornberg_weights(x0: f64, x: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; max_order + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = x[0] - x0;
    for i in 1..n {
        let mn = i.min(max_order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - x0;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

impl ImagGrid {
    pub fn new(params: GridParams) -> Result<Arc<ImagGrid>> {
        let GridParams { beta, n_tau, n_omega } = params;
        if !(beta > 0.0) {
            return Err(Error::Config(format!("beta must be positive, got {beta}")));
        }
        if n_tau < 8 || n_omega < 1 {
            return Err(Error::Config(format!("grid too small: n_tau={n_tau}, n_omega={n_omega}")));
        }
        // Spacing grows like (tau + s) near the ends and saturates in the middle:
        // x(tau) = ln(1 + tau / s) + tau / L is uniform in the point index.
        let half = n_tau.div_ceil(2);
        let x_max = if n_tau % 2 == 1 { (half - 1) as f64 } else { half as f64 - 0.5 };
        let s = TAU_CLUSTER_SCALE;
        let l = TAU_SATURATION_SCALE;
        let map = |t: f64| (1.0 + t / s).ln() + t / l;
        let total = map(0.5 * beta);
        let mut tau = vec![0.0; n_tau];
        for k in 1..half {
            let target = total * k as f64 / x_max;
            let mut t = tau[k - 1];
            for _ in 0..100 {
                let step = (map(t) - target) / (1.0 / (s + t) + 1.0 / l);
                t -= step;
                if step.abs() < 1e-15 * (1.0 + t) {
                    break;
                }
            }
            tau[k] = t;
        }
        for k in 0..n_tau / 2 {
            tau[n_tau - 1 - k] = beta - tau[k];
        }
        tau[0] = 0.0;
        tau[n_tau - 1] = beta;
        if n_tau % 2 == 1 {
            tau[n_tau / 2] = 0.5 * beta;
        }
        let omega: Vec<f64> = (0..n_omega).map(|n| (2 * n + 1) as f64 * PI / beta).collect();

        let nt = n_tau;
        let h: Vec<f64> = tau.windows(2).map(|w| w[1] - w[0]).collect();
        let mut p_re = vec![0.0; n_omega * nt];
        let mut p_im = vec![0.0; n_omega * nt];
        let mut q_re = vec![0.0; n_omega * nt];
        let mut q_im = vec![0.0; n_omega * nt];
        for (wi, &w) in omega.iter().enumerate() {
            let row = wi * nt;
            for k in 0..nt - 1 {
                let hk = h[k];
                let [i0, i1, i2, i3] = interval_moments(w, hk);
                let phase = Complex64::new((w * tau[k]).cos(), (w * tau[k]).sin());
                let fk = (i0 - i1 / hk) * phase;
                let fk1 = (i1 / hk) * phase;
                let mk = (-i1 * (hk / 3.0) + i2 * 0.5 - i3 / (6.0 * hk)) * phase;
                let mk1 = (-i1 * (hk / 6.0) + i3 / (6.0 * hk)) * phase;
                p_re[row + k] += fk.re;
                p_im[row + k] += fk.im;
                p_re[row + k + 1] += fk1.re;
                p_im[row + k + 1] += fk1.im;
                q_re[row + k] += mk.re;
                q_im[row + k] += mk.im;
                q_re[row + k + 1] += mk1.re;
                q_im[row + k + 1] += mk1.im;
            }
        }
        let mut cos = vec![0.0; nt * n_omega];
        let mut sin = vec![0.0; nt * n_omega];
        for (k, &t) in tau.iter().enumerate() {
            for (wi, &w) in omega.iter().enumerate() {
                let (s, c) = (w * t).sin_cos();
                cos[k * n_omega + wi] = c;
                sin[k * n_omega + wi] = s;
            }
        }

        // Reduced tridiagonal system for M_1..M_{N-2} with not-a-knot ends.
        let m = nt - 2;
        let mut lower = vec![0.0; m];
        let mut diag = vec![0.0; m];
        let mut upper = vec![0.0; m];
        for r in 0..m {
            let k = r + 1;
            lower[r] = h[k - 1];
            diag[r] = 2.0 * (h[k - 1] + h[k]);
            upper[r] = h[k];
        }
        {
            let (h0, h1) = (h[0], h[1]);
            diag[0] = h0 + h0 * h0 / h1 + 2.0 * (h0 + h1);
            upper[0] = h1 - h0 * h0 / h1;
            lower[0] = 0.0;
            let (ha, hb) = (h[nt - 3], h[nt - 2]);
            diag[m - 1] = hb + hb * hb / ha + 2.0 * (ha + hb);
            lower[m - 1] = ha - hb * hb / ha;
            upper[m - 1] = 0.0;
        }
        // Forward elimination factors.
        let mut cp = vec![0.0; m];
        let mut dp = vec![0.0; m];
        dp[0] = diag[0];
        cp[0] = upper[0] / dp[0];
        for r in 1..m {
            dp[r] = diag[r] - lower[r] * cp[r - 1];
            cp[r] = upper[r] / dp[r];
        }

        let head: Vec<f64> = tau[..END_STENCIL].to_vec();
        let tail: Vec<f64> = (0..END_STENCIL).map(|k| tau[nt - 1 - k]).collect();
        let w_head = fornberg_weights(tau[0], &head, 2);
        let w_tail = fornberg_weights(beta, &tail, 2);
        let end_weights = [[w_head[1].clone(), w_tail[1].clone()], [w_head[2].clone(), w_tail[2].clone()]];

        Ok(Arc::new(ImagGrid {
            beta,
            tau,
            omega,
            p_re,
            p_im,
            q_re,
            q_im,
            cos,
            sin,
            spline_diag: dp,
            spline_lower: lower,
            spline_upper: cp,
            end_weights,
        }))
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn tau(&self) -> &[f64] {
        &self.tau
    }
    pub fn omega(&self) -> &[f64] {
        &self.omega
    }
    pub fn n_tau(&self) -> usize {
        self.tau.len()
    }
    pub fn n_omega(&self) -> usize {
        self.omega.len()
    }

    /// Index of `beta - tau_k` (the mesh is symmetric).
    pub fn reflect(&self, k: usize) -> usize {
        self.tau.len() - 1 - k
    }

    pub fn params(&self) -> GridParams {
        GridParams { beta: self.beta, n_tau: self.n_tau(), n_omega: self.n_omega() }
    }

    /// Second derivatives of the not-a-knot spline; `f` is point-major with
    /// `cols` columns.
    fn spline_second_derivatives(&self, f: &[f64], cols: usize) -> Vec<f64> {
        let nt = self.tau.len();
        let m = nt - 2;
        let h: Vec<f64> = self.tau.windows(2).map(|w| w[1] - w[0]).collect();
        let mut rhs = vec![0.0; m * cols];
        for r in 0..m {
            let k = r + 1;
            for c in 0..cols {
                let d1 = (f[(k + 1) * cols + c] - f[k * cols + c]) / h[k];
                let d0 = (f[k * cols + c] - f[(k - 1) * cols + c]) / h[k - 1];
                rhs[r * cols + c] = 6.0 * (d1 - d0);
            }
        }
        let dp = &self.spline_diag;
        let cp = &self.spline_upper;
        let a = &self.spline_lower;
        for c in 0..cols {
            rhs[c] /= dp[0];
        }
        for r in 1..m {
            for c in 0..cols {
                rhs[r * cols + c] = (rhs[r * cols + c] - a[r] * rhs[(r - 1) * cols + c]) / dp[r];
            }
        }
        for r in (0..m - 1).rev() {
            for c in 0..cols {
                rhs[r * cols + c] -= cp[r] * rhs[(r + 1) * cols + c];
            }
        }
        let mut out = vec![0.0; nt * cols];
        out[cols..(nt - 1) * cols].copy_from_slice(&rhs);
        let (h0, h1) = (h[0], h[1]);
        let (ha, hb) = (h[nt - 3], h[nt - 2]);
        for c in 0..cols {
            let m1 = out[cols + c];
            let m2 = out[2 * cols + c];
            out[c] = m1 * (1.0 + h0 / h1) - (h0 / h1) * m2;
            let ma = out[(nt - 2) * cols + c];
            let mb = out[(nt - 3) * cols + c];
            out[(nt - 1) * cols + c] = ma * (1.0 + hb / ha) - (hb / ha) * mb;
        }
        out
    }
}

fn same_grid(a: &Arc<ImagGrid>, b: &Arc<ImagGrid>) -> bool {
    Arc::ptr_eq(a, b) || a.params() == b.params()
}

/// Matrix-valued function on the positive Matsubara frequencies. Negative
/// frequencies follow from `F(-iw) = F(iw)^dagger`.
#[derive(Debug, Clone)]
pub struct MatsubaraFunction {
    pub grid: Arc<ImagGrid>,
    pub data: Vec<DMatrix<Complex64>>,
    /// High-frequency moments `c_1, c_2, ...` with `F ~ sum_m c_m / (iw)^m`.
    pub tail: Vec<DMatrix<f64>>,
}

/// Matrix-valued function on the imaginary-time mesh.
#[derive(Debug, Clone)]
pub struct TauFunction {
    pub grid: Arc<ImagGrid>,
    pub data: Vec<DMatrix<f64>>,
}

impl TauFunction {
    pub fn zeros(grid: Arc<ImagGrid>, n: usize) -> Self {
        let data = vec![DMatrix::zeros(n, n); grid.n_tau()];
        TauFunction { grid, data }
    }

    pub fn n(&self) -> usize {
        self.data[0].nrows()
    }

    /// `f(0+) + f(beta-)`.
    pub fn discontinuity(&self) -> DMatrix<f64> {
        &self.data[0] + &self.data[self.data.len() - 1]
    }

    pub fn max_abs_diff(&self, other: &TauFunction) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max)
    }
}

impl MatsubaraFunction {
    pub fn zeros(grid: Arc<ImagGrid>, n: usize) -> Self {
        let data = vec![DMatrix::zeros(n, n); grid.n_omega()];
        MatsubaraFunction { grid, data, tail: vec![] }
    }

    pub fn n(&self) -> usize {
        self.data[0].nrows()
    }

    pub fn max_abs_diff(&self, other: &MatsubaraFunction) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| cmax(&(a - b))).fold(0.0, f64::max)
    }

    /// Tail value `sum_m c_m / (iw)^m` at frequency index `wi`.
    pub fn tail_at(&self, wi: usize) -> DMatrix<Complex64> {
        let n = self.n();
        let z = Complex64::new(0.0, self.grid.omega[wi]);
        let mut out = DMatrix::zeros(n, n);
        let mut zp = Complex64::new(1.0, 0.0);
        for c in &self.tail {
            zp /= z;
            out += c.map(|x| Complex64::new(x, 0.0)) * zp;
        }
        out
    }

    /// CSV with columns `n, omega_n, re, im` for element `(i, j)`.
    pub fn element_csv(&self, i: usize, j: usize) -> String {
        let mut s = String::from("n,omega_n,re,im\n");
        for (k, (w, m)) in self.grid.omega.iter().zip(&self.data).enumerate() {
            let _ = writeln!(s, "{},{:.10e},{:.10e},{:.10e}", k, w, m[(i, j)].re, m[(i, j)].im);
        }
        s
    }
}

/// `F(iw_n) = int_0^beta exp(i w_n tau) f(tau) dtau`; the tail moments are
/// read off the end values and one-sided finite-difference derivatives.
pub fn tau_to_omega(f: &TauFunction) -> Result<MatsubaraFunction> {
    let grid = &f.grid;
    let nt = grid.n_tau();
    if f.data.len() != nt {
        return Err(Error::GridMismatch(format!("{} tau samples for a {}-point mesh", f.data.len(), nt)));
    }
    let n = f.n();
    let cols = n * n;
    let mut flat = vec![0.0; nt * cols];
    for (k, m) in f.data.iter().enumerate() {
        for i in 0..n {
            for j in 0..n {
                flat[k * cols + i * n + j] = m[(i, j)];
            }
        }
    }
    let second = grid.spline_second_derivatives(&flat, cols);
    let nw = grid.n_omega();
    let mut re = vec![0.0; nw * cols];
    let mut im = vec![0.0; nw * cols];
    gemm(nw, nt, cols, &grid.p_re, &flat, &mut re, 0.0);
    gemm(nw, nt, cols, &grid.q_re, &second, &mut re, 1.0);
    gemm(nw, nt, cols, &grid.p_im, &flat, &mut im, 0.0);
    gemm(nw, nt, cols, &grid.q_im, &second, &mut im, 1.0);
    let data = (0..nw)
        .map(|w| DMatrix::from_fn(n, n, |i, j| Complex64::new(re[w * cols + i * n + j], im[w * cols + i * n + j])))
        .collect();

    let at = |k: usize, i: usize, j: usize| flat[k * cols + i * n + j];
    let end_derivative = |order: usize, i: usize, j: usize| -> f64 {
        let (w0, wb) = (&grid.end_weights[order - 1][0], &grid.end_weights[order - 1][1]);
        let head: f64 = w0.iter().enumerate().map(|(k, w)| w * at(k, i, j)).sum();
        let tail: f64 = wb.iter().enumerate().map(|(k, w)| w * at(nt - 1 - k, i, j)).sum();
        head + tail
    };
    let c1 = DMatrix::from_fn(n, n, |i, j| -(at(0, i, j) + at(nt - 1, i, j)));
    let c2 = DMatrix::from_fn(n, n, |i, j| end_derivative(1, i, j));
    let c3 = DMatrix::from_fn(n, n, |i, j| -end_derivative(2, i, j));
    Ok(MatsubaraFunction { grid: grid.clone(), data, tail: vec![c1, c2, c3] })
}

/// Analytic imaginary-time image of `1/(iw)^m`, m = 1..3, on `(0, beta)`.
fn tail_kernel(m: usize, tau: f64, beta: f64) -> f64 {
    match m {
        1 => -0.5,
        2 => (2.0 * tau - beta) / 4.0,
        3 => (beta * tau - tau * tau) / 4.0,
        _ => 0.0,
    }
}

/// `f(tau) = (1/beta) sum_{n in Z} exp(-i w_n tau) F(iw_n)` with analytic tails.
pub fn omega_to_tau(f: &MatsubaraFunction) -> Result<TauFunction> {
    let grid = &f.grid;
    let nw = grid.n_omega();
    let n = f.n();
    if f.tail.is_empty() {
        let wmax = grid.omega[nw - 1];
        let size = cmax(&f.data[nw - 1]) * wmax;
        if size > 1e-3 {
            return Err(Error::MissingTail(size));
        }
    }
    if f.tail.len() > 3 {
        return Err(Error::GridMismatch("at most three tail moments are supported".into()));
    }
    let cols = n * n;
    let mut are = vec![0.0; nw * cols];
    let mut aim = vec![0.0; nw * cols];
    for w in 0..nw {
        let t = f.tail_at(w);
        let d = &f.data[w] - t;
        for i in 0..n {
            for j in 0..n {
                are[w * cols + i * n + j] = d[(i, j)].re;
                aim[w * cols + i * n + j] = d[(i, j)].im;
            }
        }
    }
    let nt = grid.n_tau();
    let mut out = vec![0.0; nt * cols];
    gemm(nt, nw, cols, &grid.cos, &are, &mut out, 0.0);
    gemm(nt, nw, cols, &grid.sin, &aim, &mut out, 1.0);
    let scale = 2.0 / grid.beta;
    let data = grid
        .tau
        .iter()
        .enumerate()
        .map(|(k, &tau)| {
            let mut m = DMatrix::from_fn(n, n, |i, j| scale * out[k * cols + i * n + j]);
            for (idx, c) in f.tail.iter().enumerate() {
                m += c * tail_kernel(idx + 1, tau, grid.beta);
            }
            m
        })
        .collect();
    Ok(TauFunction { grid: grid.clone(), data })
}

/// `f(tau)` at a single time from the tail-corrected Matsubara sum.
pub fn value_at_tau(f: &MatsubaraFunction, tau: f64) -> Result<DMatrix<f64>> {
    let grid = &f.grid;
    let nw = grid.n_omega();
    if f.tail.is_empty() {
        let size = cmax(&f.data[nw - 1]) * grid.omega[nw - 1];
        if size > 1e-3 {
            return Err(Error::MissingTail(size));
        }
    }
    let n = f.n();
    let mut acc = DMatrix::<f64>::zeros(n, n);
    for (w, &om) in grid.omega.iter().enumerate() {
        let d = &f.data[w] - f.tail_at(w);
        let (s, c) = (om * tau).sin_cos();
        acc += d.map(|z| c * z.re + s * z.im);
    }
    acc *= 2.0 / grid.beta;
    for (idx, c) in f.tail.iter().enumerate() {
        acc += c * tail_kernel(idx + 1, tau, grid.beta);
    }
    Ok(acc)
}

/// `G0(iw) = [(iw + mu) S - F]^{-1}` with its first three moments.
pub fn evaluate_g0(fock: &DMatrix<f64>, s: &DMatrix<f64>, mu: f64, grid: &Arc<ImagGrid>) -> Result<MatsubaraFunction> {
    let n = fock.nrows();
    let s_inv = s.clone().try_inverse().ok_or(Error::Singular("overlap"))?;
    let a = fock - s * mu;
    let sc = s.map(|x| Complex64::new(x, 0.0));
    let ac = a.map(|x| Complex64::new(x, 0.0));
    let mut data = Vec::with_capacity(grid.n_omega());
    for &w in grid.omega() {
        let m = &sc * Complex64::new(0.0, w) - &ac;
        data.push(invert_complex(m).ok_or(Error::Singular("G0"))?);
    }
    let sas = &s_inv * &a * &s_inv;
    let c3 = &sas * &a * &s_inv;
    debug_assert_eq!(sas.nrows(), n);
    Ok(MatsubaraFunction { grid: grid.clone(), data, tail: vec![s_inv, sas, c3] })
}

/// Ensures two containers live on the same grid.
pub fn check_same_grid(a: &Arc<ImagGrid>, b: &Arc<ImagGrid>) -> Result<()> {
    if same_grid(a, b) {
        Ok(())
    } else {
        Err(Error::GridMismatch(format!("{:?} vs {:?}", a.params(), b.params())))
    }
}
