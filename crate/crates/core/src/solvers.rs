//! Time-domain marching, the frequency-domain fixed point and S-parameters.
//!
//! Phasor convention: a port quantity `z(t) = Re(Z e^(j omega t))`. A cell
//! driven by `Z_in` emits `S~ Z_in` one step later, so the incident phasors of
//! a mesh satisfy `Z_in = C(e^(-j omega tau) S~ Z_in) + Z_exc`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deflection::DeflectedSystem;
use crate::error::{Result, TlmError};
use crate::linalg::{CMat, CVector, Vector, C64};
use crate::mesh::{Excitation, Mesh};
use crate::plasma::CoupledCell;
use crate::scattering::SBlocks;

/// A cell that can be marched in time with equal incident/outgoing port counts.
pub trait TimeDomainCell: Send {
    fn n_ports(&self) -> usize;

    /// Consumes the incident waves of step `t` and returns the outgoing waves.
    fn step(&mut self, z_in: &Vector) -> Result<Vector>;

    fn reset(&mut self);

    /// Norm of the internal (stub) state, zero when the cell has none.
    fn stub_norm(&self) -> f64 {
        0.0
    }
}

/// Linear cell driven by its scattering blocks.
#[derive(Debug, Clone)]
pub struct LinearCell {
    blocks: SBlocks,
    stub: Vector,
}

impl LinearCell {
    pub fn new(blocks: SBlocks) -> Result<Self> {
        if blocks.n_in() != blocks.n_out() {
            return Err(TlmError::LayoutMismatch(format!(
                "cell has {} incident and {} outgoing ports",
                blocks.n_in(),
                blocks.n_out()
            )));
        }
        Ok(Self {
            stub: blocks.zero_stub(),
            blocks,
        })
    }

    pub fn blocks(&self) -> &SBlocks {
        &self.blocks
    }

    pub fn stub(&self) -> &Vector {
        &self.stub
    }
}

impl TimeDomainCell for LinearCell {
    fn n_ports(&self) -> usize {
        self.blocks.n_in()
    }

    fn step(&mut self, z_in: &Vector) -> Result<Vector> {
        let (out, next) = self.blocks.scatter_step(z_in, &self.stub)?;
        self.stub = next;
        Ok(out)
    }

    fn reset(&mut self) {
        self.stub = self.blocks.zero_stub();
    }

    fn stub_norm(&self) -> f64 {
        self.stub.norm()
    }
}

impl TimeDomainCell for DeflectedSystem {
    fn n_ports(&self) -> usize {
        self.base().n_in()
    }

    fn step(&mut self, z_in: &Vector) -> Result<Vector> {
        DeflectedSystem::step(self, z_in)
    }

    fn reset(&mut self) {
        DeflectedSystem::reset(self)
    }
}

impl TimeDomainCell for CoupledCell {
    fn n_ports(&self) -> usize {
        CoupledCell::PORTS
    }

    fn step(&mut self, z_in: &Vector) -> Result<Vector> {
        CoupledCell::step(self, z_in)
    }

    fn reset(&mut self) {
        CoupledCell::reset(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    /// Wave arriving at the port at step `t`.
    Incident,
    /// Wave emitted in response to step `t`.
    Outgoing,
    /// Port total `z_in(t) + z_out(t)`.
    Total,
    /// Node total `z_in(t) + z_out(t + tau)`.
    Node,
}

impl Quantity {
    fn label(&self) -> &'static str {
        match self {
            Quantity::Incident => "in",
            Quantity::Outgoing => "out",
            Quantity::Total => "total",
            Quantity::Node => "node",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Probe {
    pub cell: usize,
    pub port: usize,
    pub quantity: Quantity,
}

impl Probe {
    pub fn name(&self) -> String {
        format!("c{}p{}_{}", self.cell, self.port, self.quantity.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeRunConfig {
    pub steps: usize,
    #[serde(default)]
    pub probes: Vec<Probe>,
    #[serde(default = "one")]
    pub record_every: usize,
    /// Abort when the outgoing state norm exceeds this multiple of the
    /// largest excitation norm seen so far (at least 1).
    #[serde(default = "default_ceiling")]
    pub divergence_factor: f64,
}

fn one() -> usize {
    1
}

fn default_ceiling() -> f64 {
    1e12
}

impl TimeRunConfig {
    pub fn new(steps: usize, probes: Vec<Probe>) -> Self {
        Self {
            steps,
            probes,
            record_every: 1,
            divergence_factor: default_ceiling(),
        }
    }
}

/// Recorded probe values, one row per recorded step.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeTrace {
    pub probes: Vec<Probe>,
    pub steps: Vec<usize>,
    pub values: Vec<Vec<f64>>,
}

impl TimeTrace {
    pub fn column(&self, probe: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[probe]).collect()
    }

    pub fn header(&self) -> Vec<String> {
        std::iter::once("step".to_string())
            .chain(self.probes.iter().map(Probe::name))
            .collect()
    }
}

fn check_layout(mesh: &Mesh, ports: &[usize]) -> Result<()> {
    if mesh.port_counts() != ports {
        return Err(TlmError::LayoutMismatch(format!(
            "mesh expects port counts {:?}, cells provide {:?}",
            mesh.port_counts(),
            ports
        )));
    }
    Ok(())
}

/// Marches all cells for `config.steps` steps, connecting between steps.
pub fn run_time_domain(
    mesh: &Mesh,
    cells: &mut [Box<dyn TimeDomainCell>],
    excitation: &Excitation,
    config: &TimeRunConfig,
) -> Result<TimeTrace> {
    let ports: Vec<usize> = cells.iter().map(|c| c.n_ports()).collect();
    check_layout(mesh, &ports)?;
    mesh.ensure_valid()?;
    excitation.validate(mesh)?;
    if config.steps == 0 {
        return Err(TlmError::InvalidMesh(
            "time run needs at least one step".into(),
        ));
    }
    for p in &config.probes {
        mesh.port_index(p.cell, p.port)?;
    }
    let n = mesh.num_ports();
    let every = config.record_every.max(1);
    let mut trace = TimeTrace {
        probes: config.probes.clone(),
        steps: Vec::new(),
        values: Vec::new(),
    };
    let mut z_out = Vector::zeros(n);
    let mut exc_peak: f64 = 1.0;
    for t in 0..config.steps {
        let exc = excitation.at_step(t, mesh.tau(), n);
        exc_peak = exc_peak.max(exc.norm());
        let z_in = mesh.connect(&z_out, &exc)?;

        let slices: Vec<Vector> = (0..cells.len())
            .map(|c| z_in.rows(mesh.offset(c), ports[c]).into_owned())
            .collect();
        let outs: Vec<Result<Vector>> = cells
            .par_iter_mut()
            .zip(slices.par_iter())
            .map(|(cell, zin)| cell.step(zin))
            .collect();
        let mut next = Vector::zeros(n);
        for (c, o) in outs.into_iter().enumerate() {
            let o = o?;
            next.rows_mut(mesh.offset(c), ports[c]).copy_from(&o);
        }

        let norm = next.norm();
        let ceiling = config.divergence_factor * exc_peak;
        if !(norm <= ceiling) {
            return Err(TlmError::DivergenceDetected {
                step: t,
                norm,
                ceiling,
            });
        }

        if t % every == 0 {
            let row = config
                .probes
                .iter()
                .map(|p| {
                    let g = mesh.offset(p.cell) + p.port;
                    match p.quantity {
                        Quantity::Incident => z_in[g],
                        Quantity::Outgoing => next[g],
                        Quantity::Total => z_in[g] + z_out[g],
                        Quantity::Node => z_in[g] + next[g],
                    }
                })
                .collect();
            trace.steps.push(t);
            trace.values.push(row);
        }
        z_out = next;
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreqRunConfig {
    /// Angular frequency, rad/s.
    pub omega: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_ramp")]
    pub ramp_iters: usize,
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    20000
}

fn default_ramp() -> usize {
    300
}

impl FreqRunConfig {
    pub fn new(omega: f64) -> Self {
        Self {
            omega,
            tol: default_tol(),
            max_iter: default_max_iter(),
            ramp_iters: default_ramp(),
        }
    }

    pub fn from_frequency(f: f64) -> Self {
        Self::new(2.0 * PI * f)
    }
}

/// Weighted set of global ports forming one mode template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortGroup {
    pub ports: Vec<usize>,
    #[serde(default)]
    pub weights: Vec<f64>,
}

impl PortGroup {
    pub fn single(port: usize) -> Self {
        Self {
            ports: vec![port],
            weights: vec![1.0],
        }
    }

    fn weight(&self, i: usize) -> f64 {
        self.weights.get(i).copied().unwrap_or(1.0)
    }

    fn project(&self, v: &CVector) -> C64 {
        self.ports
            .iter()
            .enumerate()
            .map(|(i, &p)| v[p] * self.weight(i))
            .sum()
    }
}

/// Input group and named output groups for S-parameter extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SParamSpec {
    pub input: PortGroup,
    pub outputs: Vec<(String, PortGroup)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SParam {
    pub name: String,
    pub value: C64,
    pub db: f64,
}

pub fn to_db(s: C64) -> f64 {
    20.0 * s.norm().log10()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub residual: f64,
    pub sparams_db: Vec<f64>,
}

/// Steady-state phasors of a frequency-domain run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FreqSolution {
    pub omega: f64,
    pub theta: f64,
    /// Incident phasors at every global port.
    pub z_in: CVector,
    /// Outgoing phasors at every global port (same time reference as `z_in`).
    pub z_out: CVector,
    pub excitation: CVector,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub trace: Vec<TraceRow>,
}

/// Block-diagonal multiply `e^(-j theta) S~ z` over all cells.
fn scatter_phasors(mesh: &Mesh, condensed: &[CMat], phase: C64, z: &CVector) -> CVector {
    let parts: Vec<CVector> = condensed
        .par_iter()
        .enumerate()
        .map(|(c, s)| s * z.rows(mesh.offset(c), s.ncols()) * phase)
        .collect();
    let mut out = CVector::zeros(z.len());
    for (c, p) in parts.into_iter().enumerate() {
        out.rows_mut(mesh.offset(c), p.len()).copy_from(&p);
    }
    out
}

fn check_condensed(mesh: &Mesh, condensed: &[CMat]) -> Result<()> {
    for s in condensed {
        if s.nrows() != s.ncols() {
            return Err(TlmError::NonSquare {
                rows: s.nrows(),
                cols: s.ncols(),
            });
        }
    }
    let ports: Vec<usize> = condensed.iter().map(|s| s.ncols()).collect();
    check_layout(mesh, &ports)
}

/// Residual of `z = C(e^(-j theta) S~ z) + exc`, relative to `|exc|`
/// (absolute when the excitation vanishes).
pub fn fixed_point_residual(
    mesh: &Mesh,
    condensed: &[CMat],
    theta: f64,
    excitation: &CVector,
    z_in: &CVector,
) -> Result<f64> {
    let phase = C64::from_polar(1.0, -theta);
    let image = mesh.connect(&scatter_phasors(mesh, condensed, phase, z_in), excitation)?;
    let r = (z_in - image).norm();
    let e = excitation.norm();
    Ok(if e > 0.0 { r / e } else { r })
}

fn ramp(k: usize, ramp_iters: usize) -> f64 {
    if k >= ramp_iters {
        1.0
    } else {
        0.5 * (1.0 - (PI * k as f64 / ramp_iters as f64).cos())
    }
}

/// Fixed-point iteration `z_(k+1) = C(e^(-j theta) S~ z_k) + w_k exc` with a
/// raised-cosine ramp `w_k`.
pub fn run_freq_domain(
    mesh: &Mesh,
    condensed: &[CMat],
    excitation: &CVector,
    config: &FreqRunConfig,
    monitors: Option<&SParamSpec>,
) -> Result<FreqSolution> {
    check_condensed(mesh, condensed)?;
    mesh.ensure_valid()?;
    if excitation.len() != mesh.num_ports() {
        return Err(TlmError::LayoutMismatch(format!(
            "excitation has {} entries, mesh has {} ports",
            excitation.len(),
            mesh.num_ports()
        )));
    }
    if !(config.tol > 0.0) {
        return Err(TlmError::InvalidModelForm(format!(
            "tolerance must be positive, got {}",
            config.tol
        )));
    }
    let theta = config.omega * mesh.tau();
    let phase = C64::from_polar(1.0, -theta);
    let exc_norm = excitation.norm();
    let n = mesh.num_ports();

    let mut z = CVector::zeros(n);
    let mut trace = Vec::new();
    let mut best: Option<(f64, CVector, usize)> = None;

    for k in 0..=config.max_iter {
        let out = scatter_phasors(mesh, condensed, phase, &z);
        let full = mesh.connect(&out, excitation)?;
        let diff = (&z - &full).norm();
        let residual = if exc_norm > 0.0 {
            diff / exc_norm
        } else {
            diff
        };

        let db = match monitors {
            Some(spec) => sparams_of(&z, &out, spec)
                .map(|v| v.iter().map(|s| s.db).collect())
                .unwrap_or_else(|_| vec![f64::NAN; spec.outputs.len()]),
            None => Vec::new(),
        };
        trace.push(TraceRow {
            iteration: k,
            residual,
            sparams_db: db,
        });
        let ramp_done = k >= config.ramp_iters || exc_norm == 0.0;
        if ramp_done && best.as_ref().is_none_or(|b| residual < b.0) {
            best = Some((residual, z.clone(), k));
        }
        if ramp_done && residual <= config.tol {
            return Ok(FreqSolution {
                omega: config.omega,
                theta,
                z_out: out,
                z_in: z,
                excitation: excitation.clone(),
                iterations: k,
                residual,
                converged: true,
                trace,
            });
        }
        if !residual.is_finite() {
            break;
        }
        let w = if exc_norm == 0.0 {
            1.0
        } else {
            ramp(k + 1, config.ramp_iters)
        };
        z = mesh.connect(&out, &(excitation * C64::new(w, 0.0)))?;
    }

    let (residual, z_best, k) = best.unwrap_or((f64::INFINITY, z, config.max_iter));
    let z_out = scatter_phasors(mesh, condensed, phase, &z_best);
    Err(TlmError::MaxIterExceeded {
        best: Box::new(FreqSolution {
            omega: config.omega,
            theta,
            z_in: z_best,
            z_out,
            excitation: excitation.clone(),
            iterations: k,
            residual,
            converged: false,
            trace,
        }),
    })
}

/// Dense matrix of the connection map (zero excitation).
pub fn connection_matrix(mesh: &Mesh) -> Result<CMat> {
    let n = mesh.num_ports();
    let zero = CVector::zeros(n);
    let mut c = CMat::zeros(n, n);
    for j in 0..n {
        let mut e = CVector::zeros(n);
        e[j] = C64::new(1.0, 0.0);
        c.set_column(j, &mesh.connect(&e, &zero)?);
    }
    Ok(c)
}

/// Direct solve of `(I - C e^(-j theta) S~) z = exc`.
pub fn solve_direct(
    mesh: &Mesh,
    condensed: &[CMat],
    excitation: &CVector,
    theta: f64,
) -> Result<CVector> {
    check_condensed(mesh, condensed)?;
    let n = mesh.num_ports();
    let mut d = CMat::zeros(n, n);
    for (c, s) in condensed.iter().enumerate() {
        let o = mesh.offset(c);
        d.view_mut((o, o), s.shape()).copy_from(s);
    }
    let phase = C64::from_polar(1.0, -theta);
    let a = CMat::identity(n, n) - connection_matrix(mesh)? * d * phase;
    a.lu().solve(excitation).ok_or(TlmError::ResolventSingular {
        theta,
        sigma_min: 0.0,
    })
}

fn sparams_of(z_in: &CVector, z_out: &CVector, spec: &SParamSpec) -> Result<Vec<SParam>> {
    let inc = spec.input.project(z_in);
    if inc.norm() == 0.0 {
        return Err(TlmError::ZeroIncident);
    }
    Ok(spec
        .outputs
        .iter()
        .map(|(name, g)| {
            let value = g.project(z_out) / inc;
            SParam {
                name: name.clone(),
                value,
                db: to_db(value),
            }
        })
        .collect())
}

/// Outgoing phasor at each output group over the incident phasor at the input group.
pub fn extract_sparams(solution: &FreqSolution, spec: &SParamSpec) -> Result<Vec<SParam>> {
    sparams_of(&solution.z_in, &solution.z_out, spec)
}

/// Drives the blocks with `e^(j theta t) z0` for every unit `z0` over `steps`
/// steps and returns the largest entry-wise gap between the measured
/// harmonic transfer and `freq_condense(theta)`.
pub fn cross_domain_check(blocks: &SBlocks, theta: f64, steps: usize) -> Result<f64> {
    let s = blocks.freq_condense(theta)?;
    let n_in = blocks.n_in();
    let mut worst: f64 = 0.0;
    for j in 0..n_in {
        let mut stub = CVector::zeros(blocks.n_stub());
        let mut measured = CVector::zeros(blocks.n_out());
        for t in 0..steps.max(1) {
            let drive = C64::from_polar(1.0, theta * t as f64);
            let mut z = CVector::zeros(n_in);
            z[j] = drive;
            let (out, next) = blocks.scatter_step_complex(&z, &stub)?;
            stub = next;
            measured = out / drive;
        }
        let gap = (measured - s.column(j))
            .iter()
            .fold(0.0_f64, |a, c| a.max(c.norm()));
        worst = worst.max(gap);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use crate::mesh::Signal;

    fn matched_single(blocks: SBlocks) -> (Mesh, Vec<Box<dyn TimeDomainCell>>) {
        let n = blocks.n_in();
        let mut mesh = Mesh::new(vec![n], blocks.tau).unwrap();
        mesh.close_open_ports(C64::new(0.0, 0.0));
        let cells: Vec<Box<dyn TimeDomainCell>> = vec![Box::new(LinearCell::new(blocks).unwrap())];
        (mesh, cells)
    }

    #[test]
    fn single_cell_run_reproduces_impulse_response() {
        let b = SBlocks::new(
            Mat::from_row_slice(2, 2, &[0.1, 0.2, -0.3, 0.05]),
            Mat::from_row_slice(2, 1, &[1.0, 0.5]),
            Mat::from_row_slice(1, 2, &[0.4, -0.2]),
            Mat::from_element(1, 1, 0.6),
            1.0,
        )
        .unwrap();
        let resp = b
            .impulse_response(&Vector::from_vec(vec![1.0, 0.0]), 20)
            .unwrap();
        let (mesh, mut cells) = matched_single(b);
        let exc = Excitation::new().with(0, Signal::Impulse { amplitude: 1.0 });
        let probes = vec![
            Probe {
                cell: 0,
                port: 0,
                quantity: Quantity::Outgoing,
            },
            Probe {
                cell: 0,
                port: 1,
                quantity: Quantity::Outgoing,
            },
        ];
        let tr = run_time_domain(&mesh, &mut cells, &exc, &TimeRunConfig::new(20, probes)).unwrap();
        assert_eq!(tr.values.len(), resp.len());
        for (row, r) in tr.values.iter().zip(&resp) {
            assert_eq!(row[0], r[0]);
            assert_eq!(row[1], r[1]);
        }
    }

    #[test]
    fn zero_drive_gives_zero_trace() {
        let (mesh, mut cells) = matched_single(SBlocks::scalar(0.5, 1.0, 0.5, 0.5, 1.0));
        let probes = vec![Probe {
            cell: 0,
            port: 0,
            quantity: Quantity::Total,
        }];
        let tr = run_time_domain(
            &mesh,
            &mut cells,
            &Excitation::new(),
            &TimeRunConfig::new(10, probes),
        )
        .unwrap();
        assert!(tr.values.iter().all(|r| r[0] == 0.0));
    }

    #[test]
    fn divergence_is_detected() {
        let (mut mesh, mut cells) = matched_single(SBlocks::scalar(2.0, 0.0, 0.0, 0.0, 1.0));
        mesh.set_boundary(0, C64::new(1.0, 0.0)).unwrap();
        let exc = Excitation::new().with(0, Signal::Impulse { amplitude: 1.0 });
        let mut cfg = TimeRunConfig::new(200, vec![]);
        cfg.divergence_factor = 1e6;
        assert!(matches!(
            run_time_domain(&mesh, &mut cells, &exc, &cfg),
            Err(TlmError::DivergenceDetected { .. })
        ));
    }

    #[test]
    fn zero_excitation_converges_immediately() {
        let s = SBlocks::scalar(0.2, 1.0, 0.5, 0.3, 1.0);
        let mut mesh = Mesh::new(vec![1], 1.0).unwrap();
        mesh.close_open_ports(C64::new(0.0, 0.0));
        let cs = vec![s.freq_condense(0.4).unwrap()];
        let sol = run_freq_domain(
            &mesh,
            &cs,
            &CVector::zeros(1),
            &FreqRunConfig::new(0.4),
            None,
        )
        .unwrap();
        assert_eq!(sol.iterations, 0);
        assert_eq!(sol.z_in, CVector::zeros(1));
    }

    #[test]
    fn single_cell_fixed_point_matches_direct_solve() {
        let s = SBlocks::new(
            Mat::from_row_slice(2, 2, &[0.1, 0.7, 0.7, 0.1]),
            Mat::from_row_slice(2, 1, &[0.3, 0.3]),
            Mat::from_row_slice(1, 2, &[0.3, 0.3]),
            Mat::from_element(1, 1, 0.5),
            1.0,
        )
        .unwrap();
        let mut mesh = Mesh::new(vec![2], 1.0).unwrap();
        mesh.set_boundary(0, C64::new(0.0, 0.0)).unwrap();
        mesh.set_boundary(1, C64::new(-0.5, 0.0)).unwrap();
        let theta = 0.9;
        let cs = vec![s.freq_condense(theta).unwrap()];
        let mut exc = CVector::zeros(2);
        exc[0] = C64::new(1.0, 0.0);
        let cfg = FreqRunConfig {
            omega: theta,
            tol: 1e-12,
            max_iter: 20000,
            ramp_iters: 50,
        };
        let sol = run_freq_domain(&mesh, &cs, &exc, &cfg, None).unwrap();
        let direct = solve_direct(&mesh, &cs, &exc, theta).unwrap();
        assert!(
            (&sol.z_in - direct)
                .iter()
                .fold(0.0_f64, |a, c| a.max(c.norm()))
                < 1e-10
        );
        let r = fixed_point_residual(&mesh, &cs, theta, &exc, &sol.z_in).unwrap();
        assert!((r - sol.residual).abs() < 1e-12);
    }

    #[test]
    fn max_iter_returns_best_iterate() {
        let s = SBlocks::memoryless(Mat::from_element(1, 1, 0.999), 1.0).unwrap();
        let mut mesh = Mesh::new(vec![1], 1.0).unwrap();
        mesh.set_boundary(0, C64::new(1.0, 0.0)).unwrap();
        let cs = vec![s.freq_condense(0.0).unwrap()];
        let cfg = FreqRunConfig {
            omega: 0.0,
            tol: 1e-14,
            max_iter: 30,
            ramp_iters: 0,
        };
        match run_freq_domain(
            &mesh,
            &cs,
            &CVector::from_element(1, C64::new(1.0, 0.0)),
            &cfg,
            None,
        ) {
            Err(TlmError::MaxIterExceeded { best }) => {
                assert!(!best.converged);
                assert_eq!(best.trace.len(), 31);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sparams_in_db() {
        assert_eq!(to_db(C64::new(1.0, 0.0)), 0.0);
        let s = C64::new(10f64.powf(-3.08 / 20.0), 0.0);
        assert!((to_db(s) + 3.08).abs() < 1e-12);
        assert!((s.re - 0.7015).abs() < 1e-4);
    }

    #[test]
    fn memoryless_cells_agree_after_two_steps() {
        let b =
            SBlocks::memoryless(Mat::from_row_slice(2, 2, &[0.3, 0.1, -0.2, 0.5]), 1.0).unwrap();
        assert!(cross_domain_check(&b, 0.7, 2).unwrap() < 1e-15);
        let b = SBlocks::new(
            Mat::from_element(1, 1, 0.2),
            Mat::from_element(1, 1, 1.0),
            Mat::from_element(1, 1, 0.5),
            Mat::zeros(1, 1),
            1.0,
        )
        .unwrap();
        assert!(cross_domain_check(&b, 0.7, 2).unwrap() < 1e-15);
    }

    #[test]
    fn scalar_cross_domain_converges() {
        let b = SBlocks::scalar(0.3, 0.8, 0.6, 0.7, 1.0);
        let d = cross_domain_check(&b, PI / 5.0, 500).unwrap();
        assert!(d < 1e-8, "{d}");
        let d50 = cross_domain_check(&b, PI / 5.0, 50).unwrap();
        let d100 = cross_domain_check(&b, PI / 5.0, 100).unwrap();
        assert!(d100 < d50);
    }
}
