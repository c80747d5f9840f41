//! Mapping of a correlated system onto a sparse fictitious Hamiltonian:
//! effective-integral schemes, the on-site closed form, the self-energy fit,
//! and the energy evaluation that inserts a fictitious self-energy into the
//! parent Dyson equation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::gf2::{
    build_fock, chemical_potential_search, energy_1b, energy_2b_gm, gf2_scf_from, rhf, Gf2Options, GF2State,
    MuSearchOptions, SecondOrderKernel,
};
use crate::grid::{omega_to_tau, ImagGrid, MatsubaraFunction, TauFunction};
use crate::hamiltonian::{BasisFrame, MolecularSystem, OneBodyTensor, TwoBodyTensor};
use crate::lm::{forward_difference_jacobian, levenberg_marquardt, LeastSquaresProblem, LmOptions, Termination};

const POOL_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    P1,
    P2,
    P3,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 3] = [SchemeKind::P1, SchemeKind::P2, SchemeKind::P3];

    fn groups(self) -> &'static [IntegralGroup] {
        match self {
            SchemeKind::P1 => &[IntegralGroup::OnSite],
            SchemeKind::P2 => &[IntegralGroup::OnSite, IntegralGroup::Coulomb, IntegralGroup::Exchange],
            SchemeKind::P3 => {
                &[IntegralGroup::OnSite, IntegralGroup::Coulomb, IntegralGroup::Exchange, IntegralGroup::ThreeIndexOne]
            }
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SchemeKind::P1 => "p1",
            SchemeKind::P2 => "p2",
            SchemeKind::P3 => "p3",
        };
        f.write_str(s)
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "p1" => Ok(SchemeKind::P1),
            "p2" => Ok(SchemeKind::P2),
            "p3" => Ok(SchemeKind::P3),
            other => Err(Error::Config(format!("unknown scheme '{other}'"))),
        }
    }
}

/// Integral groups with at most two distinct orbital indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegralGroup {
    /// `(ii|ii)`
    OnSite,
    /// `(ii|jj)`, i < j
    Coulomb,
    /// `(ij|ij)`, i < j
    Exchange,
    /// `(ij|jj)`, i != j
    ThreeIndexOne,
}

pub type Quad = (usize, usize, usize, usize);

/// One fit parameter and the integrals it is scattered into.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamClass {
    pub group: IntegralGroup,
    pub label: String,
    pub members: Vec<Quad>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterizationScheme {
    pub kind: SchemeKind,
    pub n: usize,
    pub classes: Vec<ParamClass>,
}

fn group_members(group: IntegralGroup, n: usize) -> Vec<Quad> {
    let mut out = Vec::new();
    match group {
        IntegralGroup::OnSite => out.extend((0..n).map(|i| (i, i, i, i))),
        IntegralGroup::Coulomb => {
            for i in 0..n {
                out.extend((i + 1..n).map(|j| (i, i, j, j)));
            }
        }
        IntegralGroup::Exchange => {
            for i in 0..n {
                out.extend((i + 1..n).map(|j| (i, j, i, j)));
            }
        }
        IntegralGroup::ThreeIndexOne => {
            for i in 0..n {
                out.extend((0..n).filter(|&j| j != i).map(|j| (i, j, j, j)));
            }
        }
    }
    out
}

fn label(q: Quad) -> String {
    format!("({}{}|{}{})", q.0, q.1, q.2, q.3)
}

/// The eight index permutations that share a real two-electron integral.
pub fn symmetry_orbit(q: Quad) -> Vec<Quad> {
    let (i, j, k, l) = q;
    let set: BTreeSet<Quad> =
        [(i, j, k, l), (j, i, k, l), (i, j, l, k), (j, i, l, k), (k, l, i, j), (l, k, i, j), (k, l, j, i), (l, k, j, i)]
            .into_iter()
            .collect();
    set.into_iter().collect()
}

/// Unpooled scheme: one class per symmetry-distinct integral of the chosen groups.
pub fn scheme_classes(kind: SchemeKind, n: usize) -> ParameterizationScheme {
    let classes = kind
        .groups()
        .iter()
        .flat_map(|&group| {
            group_members(group, n).into_iter().map(move |q| ParamClass { group, label: label(q), members: vec![q] })
        })
        .collect();
    ParameterizationScheme { kind, n, classes }
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

/// Groups orbitals with matching `t_ii`, sorted `t` row and sorted
/// `(ii|jj)` row into equivalence classes.
pub fn orbital_classes(t: &DMatrix<f64>, v: &TwoBodyTensor, tol: f64) -> Vec<usize> {
    let n = t.nrows();
    let fingerprint = |i: usize| -> Vec<f64> {
        let mut row: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| t[(i, j)].abs()).collect();
        row.sort_by(f64::total_cmp);
        let mut coul: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| v.get(i, i, j, j)).collect();
        coul.sort_by(f64::total_cmp);
        let mut f = vec![t[(i, i)], v.get(i, i, i, i)];
        f.extend(row);
        f.extend(coul);
        f
    };
    let prints: Vec<Vec<f64>> = (0..n).map(fingerprint).collect();
    let mut reps: Vec<usize> = Vec::new();
    let mut class = vec![0; n];
    for i in 0..n {
        match reps.iter().position(|&r| close(&prints[r], &prints[i], tol)) {
            Some(c) => class[i] = c,
            None => {
                class[i] = reps.len();
                reps.push(i);
            }
        }
    }
    class
}

impl ParameterizationScheme {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Canonical packed keys of every integral touched by the scheme.
    pub fn index_set(&self) -> BTreeSet<usize> {
        let probe = TwoBodyTensor::zeros(self.n);
        self.classes
            .iter()
            .flat_map(|c| c.members.iter())
            .map(|&(i, j, k, l)| probe.canonical_key(i, j, k, l).expect("in range"))
            .collect()
    }

    /// Merges classes related by orbital equivalence. Two integrals share a
    /// parameter when they belong to the same group, connect the same orbital
    /// classes, and agree in bare value and in `|t_ij|`.
    pub fn pooled(&self, t: &DMatrix<f64>, v: &TwoBodyTensor) -> Result<ParameterizationScheme> {
        let n = self.n;
        if t.nrows() != n || v.n() != n {
            return Err(Error::DimensionMismatch { expected: n, got: v.n() });
        }
        let oc = orbital_classes(t, v, POOL_TOLERANCE);
        struct Bucket {
            group: IntegralGroup,
            orbitals: (usize, usize),
            bare: f64,
            hop: f64,
            class: ParamClass,
        }
        let mut buckets: Vec<Bucket> = Vec::new();
        for c in &self.classes {
            let (i, j, k, l) = c.members[0];
            let (a, b) = match c.group {
                IntegralGroup::OnSite => (i, i),
                IntegralGroup::Coulomb => (i, k),
                IntegralGroup::Exchange | IntegralGroup::ThreeIndexOne => (i, j),
            };
            let orbitals = match c.group {
                IntegralGroup::ThreeIndexOne => (oc[a], oc[b]),
                _ => (oc[a].min(oc[b]), oc[a].max(oc[b])),
            };
            let bare = v.get(i, j, k, l);
            let hop = t[(a, b)].abs();
            let found = buckets.iter_mut().find(|bk| {
                bk.group == c.group
                    && bk.orbitals == orbitals
                    && (bk.bare - bare).abs() <= POOL_TOLERANCE
                    && (bk.hop - hop).abs() <= POOL_TOLERANCE
            });
            match found {
                Some(bk) => bk.class.members.extend(c.members.iter().copied()),
                None => buckets.push(Bucket { group: c.group, orbitals, bare, hop, class: c.clone() }),
            }
        }
        let classes = buckets.into_iter().map(|b| b.class).collect();
        Ok(ParameterizationScheme { kind: self.kind, n, classes })
    }

    /// Builds the sparse tensor with `params[c]` on every member of class `c`.
    pub fn scatter(&self, params: &[f64]) -> Result<TwoBodyTensor> {
        if params.len() != self.classes.len() {
            return Err(Error::DimensionMismatch { expected: self.classes.len(), got: params.len() });
        }
        let mut v = TwoBodyTensor::zeros(self.n);
        for (c, &x) in self.classes.iter().zip(params) {
            for &(i, j, k, l) in &c.members {
                v.set(i, j, k, l, x)?;
            }
        }
        Ok(v)
    }

    /// Class averages of `v`; the bare starting point of a fit.
    pub fn gather(&self, v: &TwoBodyTensor) -> Vec<f64> {
        self.classes
            .iter()
            .map(|c| c.members.iter().map(|&(i, j, k, l)| v.get(i, j, k, l)).sum::<f64>() / c.members.len() as f64)
            .collect()
    }

    /// Dense positions of every class, symmetry-expanded.
    fn positions(&self) -> Vec<Vec<Quad>> {
        self.classes
            .iter()
            .map(|c| {
                let set: BTreeSet<Quad> = c.members.iter().flat_map(|&q| symmetry_orbit(q)).collect();
                set.into_iter().collect()
            })
            .collect()
    }
}

/// Closed-form on-site effective integral `sqrt(2 Sigma1_ii / (gamma_ii (1 - gamma_ii / 2)))`.
pub fn ueff_onsite(sigma1: &DMatrix<f64>, gamma: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = sigma1.nrows();
    if gamma.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, got: gamma.nrows() });
    }
    (0..n)
        .map(|i| {
            let g = gamma[(i, i)];
            let s = sigma1[(i, i)];
            if !(g > 0.0 && g < 2.0) {
                return Err(Error::SingularOccupancy { orbital: i, gamma: g });
            }
            if s < 0.0 {
                return Err(Error::NegativeMoment { orbital: i, sigma1: s });
            }
            Ok((2.0 * s / (g * (1.0 - 0.5 * g))).sqrt())
        })
        .collect()
}

/// On-site values from the second-order moment of `Sigma[G, v]`; only the
/// two endpoint kernels are evaluated.
pub fn onsite_from_propagator(g_tau: &TauFunction, v: &TwoBodyTensor, gamma: &DMatrix<f64>) -> Result<Vec<f64>> {
    if v.n() != g_tau.n() {
        return Err(Error::DimensionMismatch { expected: g_tau.n(), got: v.n() });
    }
    let last = g_tau.grid.n_tau() - 1;
    let ends = SecondOrderKernel::new(v).evaluate_points(g_tau, &[0, last]);
    let d = -(&ends[0] + &ends[1]);
    ueff_onsite(&((&d + d.transpose()) * 0.5), gamma)
}

/// How p1 on-site values are obtained.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnsiteMapping {
    /// Closed form from the first self-energy moment.
    #[default]
    Moment,
    /// Least squares like the other schemes.
    Fit,
}

/// On-site-only tensor with `(ii|ii) = values[i]`.
pub fn onsite_tensor(values: &[f64]) -> TwoBodyTensor {
    let mut v = TwoBodyTensor::zeros(values.len());
    for (i, &u) in values.iter().enumerate() {
        v.set(i, i, i, i, u).expect("in range");
    }
    v
}

/// `sum_kl gamma_kl (v_ijlk - 0.5 v_iklj)`.
fn double_counting(dense: &[f64], n: usize, gamma: &DMatrix<f64>) -> DMatrix<f64> {
    let idx = |i: usize, j: usize, k: usize, l: usize| ((i * n + j) * n + k) * n + l;
    DMatrix::from_fn(n, n, |i, j| {
        let mut acc = 0.0;
        for k in 0..n {
            for l in 0..n {
                acc += gamma[(k, l)] * (dense[idx(i, j, l, k)] - 0.5 * dense[idx(i, k, l, j)]);
            }
        }
        acc
    })
}

/// `F~ = t + MF(v, gamma) - MF(v~, gamma)`, so the mean field of `v~` is not
/// counted twice once the fictitious system is solved.
pub fn assemble_ftilde(
    t: &OneBodyTensor,
    v: &TwoBodyTensor,
    v_tilde: &TwoBodyTensor,
    gamma: &DMatrix<f64>,
) -> Result<OneBodyTensor> {
    let n = t.n();
    for got in [v.n(), v_tilde.n(), gamma.nrows(), gamma.ncols()] {
        if got != n {
            return Err(Error::DimensionMismatch { expected: n, got });
        }
    }
    let full = double_counting(&v.to_dense(), n, gamma);
    let fict = double_counting(&v_tilde.to_dense(), n, gamma);
    let m = t.matrix() + (full - fict);
    OneBodyTensor::from_matrix((&m + m.transpose()) * 0.5)
}

/// Sampled Green's function and target self-energy for the fit.
#[derive(Debug, Clone)]
pub struct FitContext {
    pub n: usize,
    pub grid: Arc<ImagGrid>,
    /// Mesh indices used in the residual.
    pub samples: Vec<usize>,
    g: Vec<DMatrix<f64>>,
    gm: Vec<DMatrix<f64>>,
    pub target: Vec<DMatrix<f64>>,
    g_tau: TauFunction,
    generator: TwoBodyTensor,
}

impl FitContext {
    /// Target `Sigma[G, v]` on every `stride`-th mesh point (both ends always included).
    pub fn new(g_tau: &TauFunction, v: &TwoBodyTensor, stride: usize) -> Result<Self> {
        let n = g_tau.n();
        if v.n() != n {
            return Err(Error::DimensionMismatch { expected: n, got: v.n() });
        }
        let grid = g_tau.grid.clone();
        let nt = grid.n_tau();
        let mut samples: Vec<usize> = (0..nt).step_by(stride.max(1)).collect();
        if *samples.last().unwrap() != nt - 1 {
            samples.push(nt - 1);
        }
        let g: Vec<DMatrix<f64>> = samples.iter().map(|&k| g_tau.data[k].clone()).collect();
        let gm: Vec<DMatrix<f64>> = samples.iter().map(|&k| -&g_tau.data[grid.reflect(k)]).collect();
        let kernel = SecondOrderKernel::new(v);
        let target = g.iter().zip(&gm).map(|(a, b)| kernel.evaluate(a, b)).collect();
        Ok(FitContext { n, grid, samples, g, gm, target, g_tau: g_tau.clone(), generator: v.clone() })
    }

    pub fn from_state(state: &GF2State, v: &TwoBodyTensor, stride: usize) -> Result<Self> {
        Self::new(&state.g_tau, v, stride)
    }

    /// Context whose target is generated by an arbitrary tensor; used to
    /// check recovery of known parameters.
    pub fn with_target(g_tau: &TauFunction, generator: &TwoBodyTensor, stride: usize) -> Result<Self> {
        Self::new(g_tau, generator, stride)
    }

    /// Residual norm of `v_tilde` over every mesh point.
    pub fn full_mesh_residual_norm(&self, v_tilde: &TwoBodyTensor) -> f64 {
        let fit = SecondOrderKernel::new(v_tilde);
        let reference = SecondOrderKernel::new(&self.generator);
        let mut acc = 0.0;
        for k in 0..self.grid.n_tau() {
            let g = &self.g_tau.data[k];
            let gm = -&self.g_tau.data[self.grid.reflect(k)];
            let d = fit.evaluate(g, &gm) - reference.evaluate(g, &gm);
            for i in 0..self.n {
                for j in i..self.n {
                    acc += d[(i, j)] * d[(i, j)];
                }
            }
        }
        acc.sqrt()
    }

    pub fn residual_len(&self) -> usize {
        self.n * (self.n + 1) / 2 * self.samples.len()
    }

    fn push_upper(&self, m: &DMatrix<f64>, out: &mut Vec<f64>) {
        for i in 0..self.n {
            for j in i..self.n {
                out.push(m[(i, j)]);
            }
        }
    }

    fn residual_for(&self, v_tilde: &TwoBodyTensor) -> DVector<f64> {
        let kernel = SecondOrderKernel::new(v_tilde);
        let mut out = Vec::with_capacity(self.residual_len());
        for s in 0..self.samples.len() {
            let d = kernel.evaluate(&self.g[s], &self.gm[s]) - &self.target[s];
            self.push_upper(&d, &mut out);
        }
        DVector::from_vec(out)
    }
}

/// `Sigma[G, v~(params)] - Sigma_target` over sampled `tau` and `i <= j`.
pub fn fit_residual(params: &[f64], scheme: &ParameterizationScheme, ctx: &FitContext) -> Result<Vec<f64>> {
    if scheme.n != ctx.n {
        return Err(Error::DimensionMismatch { expected: ctx.n, got: scheme.n });
    }
    Ok(ctx.residual_for(&scheme.scatter(params)?).data.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMode {
    /// Exact columns from the bilinear structure of the kernel.
    Bilinear,
    ForwardDifference,
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub stride: usize,
    pub lm: LmOptions,
    pub jacobian: JacobianMode,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { stride: 4, lm: LmOptions::default(), jacobian: JacobianMode::Bilinear }
    }
}

struct FitProblem<'a> {
    scheme: &'a ParameterizationScheme,
    ctx: &'a FitContext,
    positions: Vec<Vec<Quad>>,
    mode: JacobianMode,
}

impl FitProblem<'_> {
    fn bilinear_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let ctx = self.ctx;
        let n = ctx.n;
        let idx = |a: usize, b: usize, c: usize, d: usize| ((a * n + b) * n + c) * n + d;
        let kernel = SecondOrderKernel::new(&self.scheme.scatter(x.as_slice())?);
        let per_sample = n * (n + 1) / 2;
        let mut jac = DMatrix::zeros(ctx.residual_len(), self.positions.len());
        for s in 0..ctx.samples.len() {
            let tt = kernel.t_intermediate(&ctx.g[s], &ctx.gm[s]);
            let y = kernel.y_intermediate(&ctx.g[s], &ctx.gm[s]);
            for (c, pos) in self.positions.iter().enumerate() {
                let mut d = DMatrix::<f64>::zeros(n, n);
                for &(a, b, cc, dd) in pos {
                    for j in 0..n {
                        d[(a, j)] -= y[idx(dd, cc, b, j)];
                    }
                    for i in 0..n {
                        d[(i, dd)] += -2.0 * tt[idx(i, cc, b, a)] + tt[idx(i, a, b, cc)];
                    }
                }
                let mut r = s * per_sample;
                for i in 0..n {
                    for j in i..n {
                        jac[(r, c)] = 0.5 * (d[(i, j)] + d[(j, i)]);
                        r += 1;
                    }
                }
            }
        }
        Ok(jac)
    }
}

impl LeastSquaresProblem for FitProblem<'_> {
    fn residual(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.ctx.residual_for(&self.scheme.scatter(x.as_slice())?))
    }

    fn jacobian(&self, x: &DVector<f64>, r: &DVector<f64>) -> Result<DMatrix<f64>> {
        match self.mode {
            JacobianMode::Bilinear => self.bilinear_jacobian(x),
            JacobianMode::ForwardDifference => forward_difference_jacobian(self, x, r),
        }
    }
}

/// Jacobian of [`fit_residual`] at `params`.
pub fn fit_jacobian(
    params: &[f64],
    scheme: &ParameterizationScheme,
    ctx: &FitContext,
    mode: JacobianMode,
) -> Result<DMatrix<f64>> {
    let problem = FitProblem { scheme, ctx, positions: scheme.positions(), mode };
    let x = DVector::from_column_slice(params);
    let r = problem.residual(&x)?;
    problem.jacobian(&x, &r)
}

#[derive(Debug, Clone, Serialize)]
pub struct FittedClass {
    pub group: IntegralGroup,
    pub label: String,
    pub multiplicity: usize,
    pub bare: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub scheme: SchemeKind,
    pub n_parameters: usize,
    pub classes: Vec<FittedClass>,
    pub params: Vec<f64>,
    /// `||r||_2` over the sampled mesh.
    pub residual_norm: f64,
    /// `||r||_2` over every mesh point, evaluated after convergence.
    pub full_mesh_residual_norm: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub success: bool,
    /// True when the fit was restarted from the previous scheme's optimum.
    pub warm_started: bool,
    #[serde(skip)]
    pub v_tilde: TwoBodyTensor,
}

/// Levenberg-Marquardt fit starting from `start` (bare class averages when `None`).
pub fn fit_effective_integrals(
    scheme: &ParameterizationScheme,
    ctx: &FitContext,
    bare: &TwoBodyTensor,
    start: Option<&[f64]>,
    options: &FitOptions,
) -> Result<FitResult> {
    if scheme.n != ctx.n || bare.n() != ctx.n {
        return Err(Error::DimensionMismatch { expected: ctx.n, got: scheme.n });
    }
    let bare_values = scheme.gather(bare);
    let x0 = DVector::from_column_slice(start.unwrap_or(&bare_values));
    if x0.len() != scheme.len() {
        return Err(Error::DimensionMismatch { expected: scheme.len(), got: x0.len() });
    }
    let problem = FitProblem { scheme, ctx, positions: scheme.positions(), mode: options.jacobian };
    let rep = levenberg_marquardt(&problem, x0, &options.lm)?;
    let params: Vec<f64> = rep.x.iter().copied().collect();
    if params.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("effective-integral fit"));
    }
    let v_tilde = scheme.scatter(&params)?;
    let classes = scheme
        .classes
        .iter()
        .zip(&params)
        .zip(&bare_values)
        .map(|((c, &value), &b)| FittedClass {
            group: c.group,
            label: c.label.clone(),
            multiplicity: c.members.len(),
            bare: b,
            value,
        })
        .collect();
    log::debug!("{} fit: {} parameters, |r| = {:.3e}, {} iterations", scheme.kind, params.len(), rep.residual_norm, rep.iterations);
    Ok(FitResult {
        scheme: scheme.kind,
        n_parameters: params.len(),
        classes,
        params,
        residual_norm: rep.residual_norm,
        full_mesh_residual_norm: ctx.full_mesh_residual_norm(&v_tilde),
        iterations: rep.iterations,
        termination: rep.termination,
        success: rep.converged(),
        warm_started: false,
        v_tilde,
    })
}

/// Fits the requested schemes in nesting order. A scheme whose fit from bare
/// integrals ends above the previous optimum is refitted from that optimum,
/// so residual norms never increase along the ladder.
pub fn fit_ladder(
    kinds: &[SchemeKind],
    system: &MolecularSystem,
    ctx: &FitContext,
    options: &FitOptions,
) -> Result<Vec<(ParameterizationScheme, FitResult)>> {
    let mut kinds = kinds.to_vec();
    kinds.sort();
    kinds.dedup();
    let t = system.t.matrix();
    let mut out: Vec<(ParameterizationScheme, FitResult)> = Vec::new();
    for kind in kinds {
        let scheme = scheme_classes(kind, system.n_orbitals()).pooled(t, &system.v)?;
        let mut fit = fit_effective_integrals(&scheme, ctx, &system.v, None, options)?;
        if let Some((_, prev)) = out.last() {
            if fit.residual_norm > prev.residual_norm {
                let start = scheme.gather(&prev.v_tilde);
                let mut warm = fit_effective_integrals(&scheme, ctx, &system.v, Some(&start), options)?;
                warm.warm_started = true;
                if warm.residual_norm <= fit.residual_norm {
                    fit = warm;
                }
            }
        }
        out.push((scheme, fit));
    }
    Ok(out)
}

/// Sparse Hamiltonian `sum F~_ij a+_i a_j + 1/2 sum v~_ijkl a+ a+ a a`.
#[derive(Debug, Clone)]
pub struct FictitiousHamiltonian {
    pub f_tilde: OneBodyTensor,
    pub v_tilde: TwoBodyTensor,
    pub n_electrons: usize,
}

impl FictitiousHamiltonian {
    pub fn n(&self) -> usize {
        self.f_tilde.n()
    }

    /// Orthonormal-frame system with no constant term.
    pub fn to_system(&self) -> MolecularSystem {
        MolecularSystem {
            atoms: vec![],
            n_electrons: self.n_electrons,
            t: self.f_tilde.clone(),
            v: self.v_tilde.clone(),
            s: OneBodyTensor::identity(self.n()),
            e_nuc: 0.0,
            frame: BasisFrame::Sao,
        }
    }

    /// Number of symmetry-unique non-zero two-body elements.
    pub fn two_body_nonzeros(&self) -> usize {
        self.v_tilde.nonzeros(0.0).count()
    }
}

pub fn build_fictitious(v_tilde: &TwoBodyTensor, f_tilde: OneBodyTensor, n_electrons: usize) -> Result<FictitiousHamiltonian> {
    if v_tilde.n() != f_tilde.n() {
        return Err(Error::DimensionMismatch { expected: f_tilde.n(), got: v_tilde.n() });
    }
    Ok(FictitiousHamiltonian { f_tilde, v_tilde: v_tilde.clone(), n_electrons })
}

/// `F~` from the parent density followed by [`build_fictitious`].
pub fn fictitious_for(system: &MolecularSystem, gamma: &DMatrix<f64>, v_tilde: &TwoBodyTensor) -> Result<FictitiousHamiltonian> {
    let f_tilde = assemble_ftilde(&system.t, &system.v, v_tilde, gamma)?;
    build_fictitious(v_tilde, f_tilde, system.n_electrons)
}

/// Produces the dynamical self-energy of a fictitious Hamiltonian.
pub trait FictitiousSolver {
    fn self_energy(&mut self, fic: &FictitiousHamiltonian, grid: &Arc<ImagGrid>) -> Result<MatsubaraFunction>;
}

/// Self-consistent GF2 on the fictitious system.
#[derive(Debug, Clone, Copy, Default)]
pub struct Gf2Solver {
    pub options: Gf2Options,
}

impl Gf2Solver {
    pub fn solve(&self, fic: &FictitiousHamiltonian, grid: &Arc<ImagGrid>) -> Result<GF2State> {
        let sys = fic.to_system();
        let hf = rhf(&sys)?;
        gf2_scf_from(&sys, &hf, grid, &self.options)
    }
}

impl FictitiousSolver for Gf2Solver {
    fn self_energy(&mut self, fic: &FictitiousHamiltonian, grid: &Arc<ImagGrid>) -> Result<MatsubaraFunction> {
        Ok(self.solve(fic, grid)?.sigma_omega)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DsemReport {
    pub mu: f64,
    pub e_1b: f64,
    pub e_2b: f64,
    pub e_nuc: f64,
    /// `e_1b + e_2b + e_nuc`.
    pub e_total: f64,
    /// `e_1b + e_2b`.
    pub e_electronic: f64,
    /// Relative to the parent Hartree-Fock total.
    pub e_corr: f64,
    #[serde(skip)]
    pub gamma: DMatrix<f64>,
    /// Fock matrix of the new density.
    #[serde(skip)]
    pub fock: DMatrix<f64>,
    #[serde(skip)]
    pub g_omega: MatsubaraFunction,
}

/// Inserts `sigma_fic` into the parent Dyson equation built from `fock`,
/// re-searches `mu` and evaluates the energy.
pub fn dsem_evaluate_with(
    system: &MolecularSystem,
    fock: &DMatrix<f64>,
    e_hf: f64,
    sigma_fic: &MatsubaraFunction,
) -> Result<DsemReport> {
    let s = system.s.matrix();
    let search = chemical_potential_search(fock, s, sigma_fic, system.n_electrons, &MuSearchOptions::default())?;
    let fock_new = build_fock(&system.t, &system.v, &search.gamma)?.into_matrix();
    let e_1b = energy_1b(&search.gamma, system.t.matrix(), &fock_new)?;
    let e_2b = energy_2b_gm(&search.g, sigma_fic)?;
    let e_total = e_1b + e_2b + system.e_nuc;
    Ok(DsemReport {
        mu: search.mu,
        e_1b,
        e_2b,
        e_nuc: system.e_nuc,
        e_total,
        e_electronic: e_1b + e_2b,
        e_corr: e_total - e_hf,
        gamma: search.gamma,
        fock: fock_new,
        g_omega: search.g,
    })
}

pub fn dsem_evaluate(system: &MolecularSystem, parent: &GF2State, sigma_fic: &MatsubaraFunction) -> Result<DsemReport> {
    dsem_evaluate_with(system, parent.fock.matrix(), parent.e_hf, sigma_fic)
}

/// Repeats fit, fictitious solve and evaluation with the Green's function of
/// the previous pass, up to `max_passes` extra passes or until the total
/// energy changes by less than `1e-6`. The returned list starts with `first`.
pub fn dsem_iterate(
    system: &MolecularSystem,
    e_hf: f64,
    scheme: &ParameterizationScheme,
    mapping: OnsiteMapping,
    first: DsemReport,
    solver: &mut dyn FictitiousSolver,
    options: &FitOptions,
    max_passes: usize,
) -> Result<Vec<DsemReport>> {
    let mut out = vec![first];
    for _ in 0..max_passes {
        let prev = out.last().unwrap();
        let g_tau = omega_to_tau(&prev.g_omega)?;
        let v_tilde = if scheme.kind == SchemeKind::P1 && mapping == OnsiteMapping::Moment {
            onsite_tensor(&onsite_from_propagator(&g_tau, &system.v, &prev.gamma)?)
        } else {
            let ctx = FitContext::new(&g_tau, &system.v, options.stride)?;
            fit_effective_integrals(scheme, &ctx, &system.v, None, options)?.v_tilde
        };
        let fic = fictitious_for(system, &prev.gamma, &v_tilde)?;
        let sigma = solver.self_energy(&fic, &g_tau.grid)?;
        let next = dsem_evaluate_with(system, &prev.fock, e_hf, &sigma)?;
        let change = (next.e_total - prev.e_total).abs();
        log::debug!("DSEM pass {}: E = {:.10}, change {:.3e}", out.len(), next.e_total, change);
        out.push(next);
        if change < 1e-6 {
            break;
        }
    }
    Ok(out)
}
