//! End-to-end driver: HF, GF2, effective-integral mapping, fictitious solve,
//! DSEM energies and gate counts, written out as JSON/CSV artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dsem::{
    dsem_evaluate, dsem_iterate, fictitious_for, fit_ladder, onsite_tensor, scheme_classes, ueff_onsite,
    DsemReport, FictitiousHamiltonian, FictitiousSolver, FitContext, FitOptions, FitResult, Gf2Solver,
    OnsiteMapping, SchemeKind,
};
use crate::error::{Error, Result};
use crate::fci::{
    extract_sigma, fci_greens_function, solve_spectrum_seeded, FciHamiltonian, FciSolver, SolveMode,
    DEFAULT_LANCZOS_SEED,
};
use crate::fcidump::{read_fcidump, write_fcidump};
use crate::gf2::{gf2_scf, rhf, sigma1_extract, GF2State, Gf2Options};
use crate::grid::{GridParams, ImagGrid, MatsubaraFunction, DEFAULT_BETA, DEFAULT_N_OMEGA, DEFAULT_N_TAU};
use crate::hamiltonian::{BasisFrame, MolecularSystem};
use crate::integrals::{build_geometry, compute_integrals, BasisName, GeometrySpec};
use crate::qubit::{count_trotter_gates, encode_hamiltonian, write_terms, Encoding, GateCountReport};

/// Nearest-neighbour H-H distance of the built-in systems, in bohr.
pub const SPACING_BOHR: f64 = 1.8;
const BOHR_PER_ANGSTROM: f64 = 1.889_726_124_565_062;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinSystem {
    H6RingSto6g,
    H6RingDz,
    /// Spacing assumed equal to the ring's.
    H6ChainDz,
    H2Sto6g,
}

impl BuiltinSystem {
    pub const ALL: [BuiltinSystem; 4] =
        [BuiltinSystem::H6RingSto6g, BuiltinSystem::H6RingDz, BuiltinSystem::H6ChainDz, BuiltinSystem::H2Sto6g];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinSystem::H6RingSto6g => "h6_ring_sto6g",
            BuiltinSystem::H6RingDz => "h6_ring_dz",
            BuiltinSystem::H6ChainDz => "h6_chain_dz",
            BuiltinSystem::H2Sto6g => "h2_sto6g",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown system '{name}' (h2o_dz and be2_631g need an FCIDUMP)")))
    }

    /// Integrals in the Löwdin-orthogonalized frame.
    pub fn build(self) -> Result<MolecularSystem> {
        let r = SPACING_BOHR / BOHR_PER_ANGSTROM;
        let (geom, basis) = match self {
            BuiltinSystem::H6RingSto6g => (GeometrySpec::ring(6, r), BasisName::Sto6g),
            BuiltinSystem::H6RingDz => (GeometrySpec::ring(6, r), BasisName::Dz),
            BuiltinSystem::H6ChainDz => (GeometrySpec::chain(6, r), BasisName::Dz),
            BuiltinSystem::H2Sto6g => (GeometrySpec::chain(2, r), BasisName::Sto6g),
        };
        compute_integrals(&build_geometry(&geom)?, basis)?.lowdin_transform()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Fci,
    Gf2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stages {
    pub gf2: bool,
    pub fit: bool,
    pub fictitious: bool,
    /// Exact ground state of the parent Hamiltonian.
    pub reference_fci: bool,
    /// Exact parent self-energy for the curve export (expensive).
    pub reference_sigma: bool,
    pub gates: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Stages { gf2: true, fit: true, fictitious: true, reference_fci: false, reference_sigma: false, gates: true }
    }
}

impl Stages {
    pub fn gates_only() -> Self {
        Stages { gf2: false, fit: false, fictitious: false, reference_fci: false, reference_sigma: false, gates: true }
    }

    pub fn fit_only() -> Self {
        Stages { gf2: true, fit: true, ..Self::none() }
    }

    pub fn fci_only() -> Self {
        Stages { reference_fci: true, ..Self::none() }
    }

    fn none() -> Self {
        Stages { gates: false, ..Self::gates_only() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub system: Option<BuiltinSystem>,
    pub fcidump: Option<PathBuf>,
    pub beta: f64,
    pub n_tau: usize,
    pub n_omega: usize,
    pub scheme: SchemeKind,
    pub onsite: OnsiteMapping,
    pub solver: SolverKind,
    pub fci_mode: SolveMode,
    /// Extra self-consistency passes after the first DSEM energy.
    pub dsem_passes: usize,
    pub fit_stride: usize,
    pub output: PathBuf,
    /// Lanczos start vectors.
    pub seed: u64,
    pub stages: Stages,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            system: Some(BuiltinSystem::H6RingSto6g),
            fcidump: None,
            beta: DEFAULT_BETA,
            n_tau: DEFAULT_N_TAU,
            n_omega: DEFAULT_N_OMEGA,
            scheme: SchemeKind::P1,
            onsite: OnsiteMapping::Moment,
            solver: SolverKind::Fci,
            fci_mode: SolveMode::Auto,
            dsem_passes: 0,
            fit_stride: FitOptions::default().stride,
            output: PathBuf::from("dsem-out"),
            seed: DEFAULT_LANCZOS_SEED,
            stages: Stages::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn grid(&self) -> GridParams {
        GridParams { beta: self.beta, n_tau: self.n_tau, n_omega: self.n_omega }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        match (&self.system, &self.fcidump) {
            (Some(_), Some(_)) => return bad("give either a built-in system or an FCIDUMP path, not both"),
            (None, None) => return bad("no system: set `system` or `fcidump`"),
            _ => {}
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return bad("beta must be positive");
        }
        if self.n_tau < 8 || self.n_omega < 8 {
            return bad("grids need at least 8 points");
        }
        if self.fit_stride == 0 {
            return bad("fit_stride must be at least 1");
        }
        let s = &self.stages;
        if s.fit && !s.gf2 {
            return bad("stage `fit` needs `gf2`");
        }
        if s.fictitious && !s.fit {
            return bad("stage `fictitious` needs `fit`");
        }
        if s.dsem_needs_fictitious(self.dsem_passes) {
            return bad("dsem_passes needs stage `fictitious`");
        }
        if s.reference_sigma && !(s.reference_fci && s.gf2) {
            return bad("stage `reference_sigma` needs `reference_fci` and `gf2`");
        }
        if !(s.gf2 || s.reference_fci || s.gates) {
            return bad("no stage selected");
        }
        Ok(())
    }

    pub fn system_label(&self) -> String {
        match (&self.system, &self.fcidump) {
            (Some(b), _) => b.name().to_string(),
            (None, Some(p)) => p.file_stem().map_or("fcidump".into(), |s| s.to_string_lossy().into_owned()),
            _ => "none".into(),
        }
    }
}

impl Stages {
    fn dsem_needs_fictitious(&self, passes: usize) -> bool {
        passes > 0 && !self.fictitious
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemInfo {
    pub name: String,
    pub n_orbitals: usize,
    pub n_electrons: usize,
    pub e_nuc: f64,
    pub frame: BasisFrame,
}

/// One row of the energy tables. Components are absent for methods that
/// only give a total.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyRow {
    pub method: String,
    pub e_1b: Option<f64>,
    pub e_2b: Option<f64>,
    pub e_nuc: f64,
    pub e_total: f64,
    pub e_electronic: f64,
    pub e_corr: Option<f64>,
}

impl EnergyRow {
    fn from_parts(method: String, e_1b: f64, e_2b: f64, e_nuc: f64, e_corr: f64) -> Self {
        EnergyRow {
            method,
            e_1b: Some(e_1b),
            e_2b: Some(e_2b),
            e_nuc,
            e_total: e_1b + e_2b + e_nuc,
            e_electronic: e_1b + e_2b,
            e_corr: Some(e_corr),
        }
    }

    fn from_gf2(method: String, st: &GF2State) -> Self {
        Self::from_parts(method, st.e_1b, st.e_2b, st.e_nuc, st.e_corr)
    }

    fn from_dsem(method: String, r: &DsemReport) -> Self {
        Self::from_parts(method, r.e_1b, r.e_2b, r.e_nuc, r.e_corr)
    }

    fn total_only(method: String, e_total: f64, e_nuc: f64, e_corr: Option<f64>) -> Self {
        EnergyRow { method, e_1b: None, e_2b: None, e_nuc, e_total, e_electronic: e_total - e_nuc, e_corr }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FictitiousSummary {
    pub scheme: SchemeKind,
    pub mapping: &'static str,
    pub solver: SolverKind,
    pub two_body_nonzeros: usize,
    /// Distinct effective-integral values.
    pub n_parameters: usize,
    pub ground_energy: Option<f64>,
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GateRow {
    pub hamiltonian: String,
    pub frame: BasisFrame,
    pub jw: GateCountReport,
    pub bk: GateCountReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub system: SystemInfo,
    pub config: RunConfig,
    pub energies: Vec<EnergyRow>,
    pub gf2_iterations: Option<usize>,
    pub gf2_converged: Option<bool>,
    /// Closed-form on-site values (p1 moment mapping).
    pub onsite: Option<Vec<f64>>,
    pub fits: Vec<FitResult>,
    pub fictitious: Option<FictitiousSummary>,
    pub gates: Vec<GateRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableLayout {
    /// One row per method.
    Rows,
    /// One row per quantity, one column per method.
    Comparison,
}

const QUANTITIES: [&str; 6] = ["e_1b", "e_2b", "e_nuc", "e_total", "e_electronic", "e_corr"];

fn quantity(row: &EnergyRow, q: &str) -> Option<f64> {
    match q {
        "e_1b" => row.e_1b,
        "e_2b" => row.e_2b,
        "e_nuc" => Some(row.e_nuc),
        "e_total" => Some(row.e_total),
        "e_electronic" => Some(row.e_electronic),
        _ => row.e_corr,
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.6}"))
}

/// Energy table in hartree, six decimals, fixed column order.
pub fn emit_table(rows: &[EnergyRow], layout: TableLayout) -> String {
    if rows.is_empty() {
        log::warn!("energy table has no rows");
    }
    let mut out = String::new();
    match layout {
        TableLayout::Rows => {
            let _ = writeln!(out, "method,{}", QUANTITIES.join(","));
            for r in rows {
                let cells: Vec<String> = QUANTITIES.iter().map(|q| cell(quantity(r, q))).collect();
                let _ = writeln!(out, "{},{}", r.method, cells.join(","));
            }
        }
        TableLayout::Comparison => {
            let header: Vec<&str> = rows.iter().map(|r| r.method.as_str()).collect();
            if header.is_empty() {
                let _ = writeln!(out, "quantity");
            } else {
                let _ = writeln!(out, "quantity,{}", header.join(","));
            }
            if !rows.is_empty() {
                for q in QUANTITIES {
                    let cells: Vec<String> = rows.iter().map(|r| cell(quantity(r, q))).collect();
                    let _ = writeln!(out, "{q},{}", cells.join(","));
                }
            }
        }
    }
    out
}

pub fn emit_gate_table(rows: &[GateRow]) -> String {
    let mut out = String::from("hamiltonian,frame,n_qubits,jw_terms,jw_sqg,jw_cnot,bk_terms,bk_sqg,bk_cnot\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:?},{},{},{},{},{},{},{}",
            r.hamiltonian, r.frame, r.jw.n_qubits, r.jw.n_terms, r.jw.sqg, r.jw.cnot, r.bk.n_terms, r.bk.sqg, r.bk.cnot
        );
    }
    out
}

fn emit_fit_table(fits: &[FitResult]) -> String {
    let mut out = String::from("scheme,class,group,multiplicity,bare,value\n");
    for f in fits {
        for c in &f.classes {
            let _ = writeln!(out, "{},{},{:?},{},{:.10},{:.10}", f.scheme, c.label, c.group, c.multiplicity, c.bare, c.value);
        }
    }
    out
}

/// Self-energy elements exported for the curve plots.
pub fn curve_elements(n: usize) -> Vec<(usize, usize)> {
    [(0, 0), (1, 1), (0, 1), (0, 3)].into_iter().filter(|&(i, j)| i < n && j < n).collect()
}

/// `omega` then Re/Im columns for every (source, element) pair.
pub fn emit_curves(sources: &[(&str, &MatsubaraFunction)], elements: &[(usize, usize)]) -> Result<String> {
    let Some((_, first)) = sources.first() else {
        return Ok("omega\n".into());
    };
    let grid = first.grid.clone();
    let mut out = String::from("omega");
    for (name, f) in sources {
        crate::grid::check_same_grid(&grid, &f.grid)?;
        for (i, j) in elements {
            let _ = write!(out, ",{name}_re_{i}{j},{name}_im_{i}{j}");
        }
    }
    out.push('\n');
    for (w, om) in grid.omega().iter().enumerate() {
        let _ = write!(out, "{om:.10e}");
        for (_, f) in sources {
            for &(i, j) in elements {
                let z = f.data[w][(i, j)];
                let _ = write!(out, ",{:.10e},{:.10e}", z.re, z.im);
            }
        }
        out.push('\n');
    }
    Ok(out)
}

/// Sparse fictitious Hamiltonian written as FCIDUMP.
pub fn export_fictitious(fic: &FictitiousHamiltonian, path: impl AsRef<Path>) -> Result<()> {
    write_fcidump(&fic.to_system(), path)
}

fn gate_row(label: &str, frame: BasisFrame, sys: &MolecularSystem, terms_dir: Option<&Path>) -> Result<GateRow> {
    let mut counts = Vec::with_capacity(2);
    for enc in Encoding::ALL {
        let terms = encode_hamiltonian(sys.t.matrix(), &sys.v, sys.e_nuc, enc)?;
        if let Some(dir) = terms_dir {
            let stem: String = label.chars().filter(|c| c.is_alphanumeric()).collect();
            let f = fs::File::create(dir.join(format!("{stem}_{frame:?}_{enc}.txt").to_lowercase()))?;
            write_terms(std::io::BufWriter::new(f), &terms)?;
        }
        counts.push(count_trotter_gates(&terms, enc)?);
    }
    Ok(GateRow { hamiltonian: label.to_string(), frame, jw: counts[0], bk: counts[1] })
}

/// Every file written by a run, relative to the output directory.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub report: Option<RunReport>,
    pub files: Vec<PathBuf>,
}

struct Writer {
    root: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn write(&mut self, rel: &str, contents: &str) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, contents)?;
        self.files.push(PathBuf::from(rel));
        Ok(())
    }
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

fn load_system(config: &RunConfig) -> Result<MolecularSystem> {
    match (&config.system, &config.fcidump) {
        (Some(b), _) => b.build(),
        (None, Some(p)) => read_fcidump(p),
        _ => Err(Error::Config("no system".into())),
    }
}

fn parent_reference(
    sys: &MolecularSystem,
    config: &RunConfig,
    grid: Option<&Arc<ImagGrid>>,
) -> Result<(f64, Option<MatsubaraFunction>)> {
    let h = FciHamiltonian::from_system(sys)?;
    let sol = solve_spectrum_seeded(&h, sys.n_electrons, config.fci_mode, config.seed)?;
    let sigma = match grid {
        Some(g) if config.stages.reference_sigma => {
            let gf = fci_greens_function(&h, &sol, g, None)?;
            Some(extract_sigma(&gf, sys.t.matrix(), &sys.v)?)
        }
        _ => None,
    };
    Ok((sol.ground_energy(), sigma))
}

/// Runs the selected stages and writes `report.json`, `tables/*.csv`,
/// `curves/*.csv` and `config-echo.toml` under `config.output`.
pub fn run_pipeline(config: &RunConfig) -> Result<RunArtifacts> {
    stage("config", config.validate())?;
    let mut out = Writer { root: config.output.clone(), files: Vec::new() };
    stage("output", fs::create_dir_all(&out.root).map_err(Error::from))?;
    stage("output", config.to_toml().and_then(|t| out.write("config-echo.toml", &t)))?;
    let clock = Instant::now();
    let sys = stage("system", load_system(config))?;
    let n = sys.n_orbitals();
    log::info!("{}: {} orbitals, {} electrons", config.system_label(), n, sys.n_electrons);
    let stages = config.stages;
    let mut energies = Vec::new();
    let mut fits: Vec<FitResult> = Vec::new();
    let mut onsite = None;
    let mut fictitious = None;
    let mut gates = Vec::new();
    let mut fic_systems: Vec<(SchemeKind, FictitiousHamiltonian)> = Vec::new();
    let mut curves: Vec<(String, MatsubaraFunction)> = Vec::new();
    let mut parent: Option<GF2State> = None;

    if stages.gf2 {
        let options = Gf2Options { grid: config.grid(), ..Default::default() };
        let st = stage("gf2", gf2_scf(&sys, &options))?;
        log::info!("GF2 done in {:.1?}: E = {:.8}", clock.elapsed(), st.e_total);
        energies.push(EnergyRow::total_only("HF".into(), st.e_hf, st.e_nuc, Some(0.0)));
        energies.push(EnergyRow::from_gf2("GF2(v)".into(), &st));
        curves.push(("gf2".into(), st.sigma_omega.clone()));
        parent = Some(st);
    }

    if let (true, Some(st)) = (stages.fit, parent.as_ref()) {
        let fit_options = FitOptions { stride: config.fit_stride, ..Default::default() };
        let kinds: Vec<SchemeKind> = SchemeKind::ALL.into_iter().filter(|k| *k <= config.scheme).collect();
        let ctx = stage("fit", FitContext::from_state(st, &sys.v, config.fit_stride))?;
        let ladder = stage("fit", fit_ladder(&kinds, &sys, &ctx, &fit_options))?;
        log::info!("fits done in {:.1?}", clock.elapsed());
        let moment = if config.onsite == OnsiteMapping::Moment {
            let s1 = sigma1_extract(&st.sigma_tau);
            let u = stage("fit", ueff_onsite(s1.matrix(), st.gamma.matrix()))?;
            onsite = Some(u.clone());
            Some(onsite_tensor(&u))
        } else {
            None
        };
        for (scheme, fit) in &ladder {
            let v_tilde = match (&moment, scheme.kind) {
                (Some(v), SchemeKind::P1) => v.clone(),
                _ => fit.v_tilde.clone(),
            };
            let fic = stage("fit", fictitious_for(&sys, st.gamma.matrix(), &v_tilde))?;
            fic_systems.push((scheme.kind, fic));
        }
        fits = ladder.into_iter().map(|(_, f)| f).collect();

        if stages.fictitious {
            let (kind, fic) = fic_systems.last().expect("ladder is non-empty");
            let grid = st.g_tau.grid.clone();
            let tag = match config.solver {
                SolverKind::Fci => "FCI",
                SolverKind::Gf2 => "GF2",
            };
            let mut fci = FciSolver { mode: config.fci_mode, seed: config.seed, last: None };
            let mut gf2 = Gf2Solver { options: Gf2Options { grid: config.grid(), ..Default::default() } };
            let solver: &mut dyn FictitiousSolver = match config.solver {
                SolverKind::Fci => &mut fci,
                SolverKind::Gf2 => &mut gf2,
            };
            let sigma = stage("fictitious", solver.self_energy(fic, &grid))?;
            let first = stage("dsem", dsem_evaluate(&sys, st, &sigma))?;
            log::info!("{tag}({kind}) done in {:.1?}: E = {:.8}", clock.elapsed(), first.e_total);
            energies.push(EnergyRow::from_dsem(format!("{tag}({kind})"), &first));
            curves.push(("fictitious".into(), sigma));
            if config.dsem_passes > 0 {
                let scheme = stage("dsem", scheme_classes(*kind, n).pooled(sys.t.matrix(), &sys.v))?;
                let fit_options = FitOptions { stride: config.fit_stride, ..Default::default() };
                let passes = stage(
                    "dsem",
                    dsem_iterate(&sys, st.e_hf, &scheme, config.onsite, first, solver, &fit_options, config.dsem_passes),
                )?;
                for (k, p) in passes.iter().enumerate().skip(1) {
                    energies.push(EnergyRow::from_dsem(format!("{tag}({kind}) pass {}", k + 1), p));
                }
            }
            let run = fci.last;
            let mapping = if *kind == SchemeKind::P1 && onsite.is_some() { "moment" } else { "fit" };
            fictitious = Some(FictitiousSummary {
                scheme: *kind,
                mapping,
                solver: config.solver,
                two_body_nonzeros: fic.two_body_nonzeros(),
                n_parameters: fits.last().map_or(0, |f| f.n_parameters),
                ground_energy: run.map(|r| r.ground_energy),
                mu: run.map(|r| r.mu),
            });
            stage("output", export_fictitious(fic, out.root.join("fictitious.fcidump")))?;
            out.files.push(PathBuf::from("fictitious.fcidump"));
        }
    }

    if stages.reference_fci {
        let grid = parent.as_ref().map(|st| st.g_tau.grid.clone());
        let (e, sigma) = stage("reference_fci", parent_reference(&sys, config, grid.as_ref()))?;
        let e_corr = parent.as_ref().map(|st| e - st.e_hf);
        log::info!("FCI(v) done in {:.1?}: E = {e:.8}", clock.elapsed());
        energies.push(EnergyRow::total_only("FCI(v)".into(), e, sys.e_nuc, e_corr));
        if let Some(s) = sigma {
            curves.push(("fci".into(), s));
        }
    }

    if stages.gates {
        let terms_dir = out.root.join("terms");
        stage("gates", fs::create_dir_all(&terms_dir).map_err(Error::from))?;
        gates.push(stage("gates", gate_row("H(v)", sys.frame, &sys, Some(&terms_dir)))?);
        if sys.frame == BasisFrame::Sao {
            let hf = stage("gates", rhf(&sys))?;
            let mo = stage("gates", sys.rotate(&hf.coefficients, BasisFrame::Mo))?;
            gates.push(stage("gates", gate_row("H(v)", BasisFrame::Mo, &mo, Some(&terms_dir)))?);
        }
        for (kind, fic) in &fic_systems {
            let label = format!("H({kind})");
            gates.push(stage("gates", gate_row(&label, sys.frame, &fic.to_system(), Some(&terms_dir)))?);
        }
        let mut names: Vec<String> = fs::read_dir(&terms_dir)?
            .filter_map(|e| e.ok().map(|e| format!("terms/{}", e.file_name().to_string_lossy())))
            .collect();
        names.sort();
        out.files.extend(names.into_iter().map(PathBuf::from));
        stage("output", out.write("tables/gates.csv", &emit_gate_table(&gates)))?;
        log::info!("gate counts done in {:.1?}", clock.elapsed());
    }

    if !stages.gf2 && !stages.reference_fci {
        return Ok(RunArtifacts { report: None, files: out.files });
    }

    stage("output", out.write("tables/energies.csv", &emit_table(&energies, TableLayout::Rows)))?;
    stage("output", out.write("tables/energies_comparison.csv", &emit_table(&energies, TableLayout::Comparison)))?;
    if !fits.is_empty() {
        stage("output", out.write("tables/fit.csv", &emit_fit_table(&fits)))?;
    }
    if !curves.is_empty() {
        let sources: Vec<(&str, &MatsubaraFunction)> = curves.iter().map(|(s, f)| (s.as_str(), f)).collect();
        let csv = stage("output", emit_curves(&sources, &curve_elements(n)))?;
        stage("output", out.write("curves/sigma.csv", &csv))?;
    }
    let report = RunReport {
        system: SystemInfo {
            name: config.system_label(),
            n_orbitals: n,
            n_electrons: sys.n_electrons,
            e_nuc: sys.e_nuc,
            frame: sys.frame,
        },
        config: config.clone(),
        energies,
        gf2_iterations: parent.as_ref().map(|s| s.iterations),
        gf2_converged: parent.as_ref().map(|s| s.converged),
        onsite,
        fits,
        fictitious,
        gates,
    };
    let json = stage("output", serde_json::to_string_pretty(&report).map_err(Error::from))?;
    stage("output", out.write("report.json", &json))?;
    Ok(RunArtifacts { report: Some(report), files: out.files })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(m: &str, e1: f64, e2: f64, nuc: f64) -> EnergyRow {
        EnergyRow::from_parts(m.into(), e1, e2, nuc, -0.01)
    }

    #[test]
    fn config_round_trips_and_defaults() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let back = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        let parsed = RunConfig::from_toml("scheme = \"p3\"\nsystem = \"h6_chain_dz\"\n[stages]\ngates = false\n").unwrap();
        assert_eq!(parsed.scheme, SchemeKind::P3);
        assert_eq!(parsed.system, Some(BuiltinSystem::H6ChainDz));
        assert!(!parsed.stages.gates && parsed.stages.fit);
        assert_eq!(parsed.beta, DEFAULT_BETA);
    }

    #[test]
    fn invalid_configs_are_rejected_before_compute() {
        assert!(RunConfig::from_toml("bogus = 1").is_err());
        let mut c = RunConfig { fcidump: Some("x.fcidump".into()), ..Default::default() };
        assert!(c.validate().is_err());
        c.system = None;
        c.validate().unwrap();
        c.beta = -1.0;
        assert!(c.validate().is_err());
        let c = RunConfig { stages: Stages { gf2: false, ..Default::default() }, ..Default::default() };
        assert!(c.validate().is_err());
        let c = RunConfig { dsem_passes: 1, stages: Stages::fit_only(), ..Default::default() };
        assert!(c.validate().is_err());
        assert!(BuiltinSystem::from_name("h2o_dz").is_err());
        for b in BuiltinSystem::ALL {
            assert_eq!(BuiltinSystem::from_name(b.name()).unwrap(), b);
        }
    }

    #[test]
    fn table_layouts() {
        let one = emit_table(&[row("GF2(v)", -12.0, -0.1, 3.0)], TableLayout::Rows);
        let lines: Vec<&str> = one.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "method,e_1b,e_2b,e_nuc,e_total,e_electronic,e_corr");
        assert_eq!(lines[1], "GF2(v),-12.000000,-0.100000,3.000000,-9.100000,-12.100000,-0.010000");
        let sweep: Vec<EnergyRow> = ["p1", "p2", "p3"].iter().map(|m| row(m, -12.0, -0.1, 3.0)).collect();
        let cmp = emit_table(&sweep, TableLayout::Comparison);
        assert!(cmp.starts_with("quantity,p1,p2,p3\n"));
        assert!(cmp.lines().skip(1).all(|l| l.split(',').count() == 4));
        assert_eq!(emit_table(&[], TableLayout::Rows).lines().count(), 1);
        assert_eq!(emit_table(&[], TableLayout::Comparison), "quantity\n");
        let fci = EnergyRow::total_only("FCI(v)".into(), -6.0, 3.0, None);
        assert_eq!(emit_table(&[fci], TableLayout::Rows).lines().nth(1).unwrap(), "FCI(v),,,3.000000,-6.000000,-9.000000,");
    }

    #[test]
    fn curve_elements_fit_the_basis() {
        assert_eq!(curve_elements(2), vec![(0, 0), (1, 1), (0, 1)]);
        assert_eq!(curve_elements(6).len(), 4);
    }
}
