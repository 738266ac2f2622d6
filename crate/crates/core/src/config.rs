//! JSON simulation configuration: schema, validation and assembly.
//!
//! Ports are addressed as `[cell, local_port]`. Matrices are given row-wise.
//! Quantities are SI unless a `normalization` block is present, in which
//! case `eps` and `mu` are relative to `eps0` and `mu0`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Result, TlmError};
use crate::linalg::{Mat, C64};
use crate::maxwell::{HexGeometry, Materials, MaxwellCell};
use crate::mesh::{Excitation, Mesh, Signal};
use crate::plasma::{CoupledCell, ParticleParams, ParticleState, V3};
use crate::scattering::SBlocks;
use crate::solvers::{
    FreqRunConfig, LinearCell, PortGroup, Probe, SParamSpec, TimeDomainCell, TimeRunConfig,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Speed of light in vacuum, m/s.
pub const C0_SI: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SchemaViolation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for SchemaViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("configuration is not valid JSON: {0}")]
    Syntax(String),
    #[error("configuration has {} schema violation(s): {}", .0.len(), join(.0))]
    Schema(Vec<SchemaViolation>),
    #[error("unit error at {path}: {message}")]
    Unit { path: String, message: String },
}

fn join(v: &[SchemaViolation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl ConfigError {
    pub fn kind(&self) -> &'static str {
        match self {
            ConfigError::Syntax(_) | ConfigError::Schema(_) => "SchemaViolation",
            ConfigError::Unit { .. } => "UnitError",
        }
    }

    pub fn violations(&self) -> Vec<SchemaViolation> {
        match self {
            ConfigError::Schema(v) => v.clone(),
            ConfigError::Syntax(m) => vec![SchemaViolation {
                path: "$".into(),
                message: m.clone(),
            }],
            ConfigError::Unit { path, message } => vec![SchemaViolation {
                path: path.clone(),
                message: message.clone(),
            }],
        }
    }
}

/// Scalar (isotropic) or full 3x3 tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Tensor {
    Scalar(f64),
    Matrix([[f64; 3]; 3]),
}

impl Tensor {
    pub fn to_mat(&self) -> Mat {
        match self {
            Tensor::Scalar(s) => Mat::identity(3, 3) * *s,
            Tensor::Matrix(m) => Mat::from_fn(3, 3, |r, c| m[r][c]),
        }
    }
}

fn zero_tensor() -> Tensor {
    Tensor::Scalar(0.0)
}

/// Real or `[re, im]` reflection coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Reflection {
    Real(f64),
    Complex([f64; 2]),
}

impl Reflection {
    pub fn value(&self) -> C64 {
        match *self {
            Reflection::Real(r) => C64::new(r, 0.0),
            Reflection::Complex([re, im]) => C64::new(re, im),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub eps0: f64,
    pub mu0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialParticles {
    /// Total charge in the cell, C.
    pub charge: f64,
    /// Mean velocity, m/s.
    pub velocity: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum CellSpec {
    Maxwell {
        b_rows: [[f64; 3]; 3],
        eps: Tensor,
        mu: Tensor,
        #[serde(default = "zero_tensor")]
        kappa_e: Tensor,
        #[serde(default = "zero_tensor")]
        kappa_m: Tensor,
        y: f64,
        y_dual: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        particles: Option<InitialParticles>,
    },
    Blocks {
        k: Vec<Vec<f64>>,
        #[serde(default)]
        l: Vec<Vec<f64>>,
        #[serde(default)]
        m: Vec<Vec<f64>>,
        #[serde(default)]
        n: Vec<Vec<f64>>,
    },
}

pub type PortRef = [usize; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub a: PortRef,
    pub b: PortRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySpec {
    pub port: PortRef,
    pub reflection: Reflection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcitationSpec {
    pub port: PortRef,
    pub signal: Signal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub cell: usize,
    pub port: usize,
    pub quantity: crate::solvers::Quantity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub ports: Vec<PortRef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedGroupSpec {
    pub name: String,
    pub ports: Vec<PortRef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SParamConfig {
    pub input: GroupSpec,
    pub outputs: Vec<NamedGroupSpec>,
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

fn default_record_every() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RunSpec {
    Time {
        steps: usize,
        #[serde(default)]
        probes: Vec<ProbeSpec>,
        #[serde(default = "default_record_every")]
        record_every: usize,
    },
    Frequency {
        /// Frequency in Hz.
        frequency: f64,
        #[serde(default = "default_tol")]
        tol: f64,
        #[serde(default = "default_max_iter")]
        max_iter: usize,
        #[serde(default = "default_ramp")]
        ramp_iters: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sparams: Option<SParamConfig>,
    },
    Sweep {
        /// Frequencies in Hz.
        frequencies: Vec<f64>,
        #[serde(default = "default_tol")]
        tol: f64,
        #[serde(default = "default_max_iter")]
        max_iter: usize,
        #[serde(default = "default_ramp")]
        ramp_iters: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sparams: Option<SParamConfig>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<Normalization>,
    pub tau: f64,
    pub cells: Vec<CellSpec>,
    #[serde(default)]
    pub links: Vec<LinkSpec>,
    #[serde(default)]
    pub boundaries: Vec<BoundarySpec>,
    /// Reflection applied to every port that is neither linked nor listed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_boundary: Option<Reflection>,
    #[serde(default)]
    pub excitations: Vec<ExcitationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub particles: Option<ParticleParams>,
    pub run: RunSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Cell after assembly; stability is not checked here.
#[derive(Debug, Clone)]
pub enum CellModel {
    Maxwell {
        cell: Box<MaxwellCell>,
        particles: Option<ParticleState>,
    },
    Blocks(SBlocks),
}

impl CellModel {
    pub fn blocks(&self) -> SBlocks {
        match self {
            CellModel::Maxwell { cell, .. } => cell.smatrix(),
            CellModel::Blocks(b) => b.clone(),
        }
    }

    pub fn n_ports(&self) -> usize {
        match self {
            CellModel::Maxwell {
                particles: Some(_), ..
            } => CoupledCell::PORTS,
            CellModel::Maxwell { .. } => 6,
            CellModel::Blocks(b) => b.n_in(),
        }
    }

    pub fn is_coupled(&self) -> bool {
        matches!(
            self,
            CellModel::Maxwell {
                particles: Some(_),
                ..
            }
        )
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CellModel::Maxwell {
                particles: Some(_), ..
            } => "maxwell+particles",
            CellModel::Maxwell { .. } => "maxwell",
            CellModel::Blocks(_) => "blocks",
        }
    }
}

/// Everything needed to run a configuration.
#[derive(Debug, Clone)]
pub struct Assembled {
    pub mesh: Mesh,
    pub cells: Vec<CellModel>,
    pub excitation: Excitation,
    pub particles: Option<ParticleParams>,
}

impl Assembled {
    /// Time-domain cells; particle-laden Maxwell cells become coupled cells.
    pub fn time_cells(&self) -> Result<Vec<Box<dyn TimeDomainCell>>> {
        self.cells
            .iter()
            .map(|c| -> Result<Box<dyn TimeDomainCell>> {
                match c {
                    CellModel::Maxwell {
                        cell,
                        particles: Some(state),
                    } => {
                        let params = self.particles.ok_or_else(|| {
                            TlmError::InvalidParticles("particle parameters missing".into())
                        })?;
                        Ok(Box::new(CoupledCell::new(
                            (**cell).clone(),
                            params,
                            state.clone(),
                        )?))
                    }
                    other => Ok(Box::new(LinearCell::new(other.blocks())?)),
                }
            })
            .collect()
    }
}

struct Collector(Vec<SchemaViolation>);

impl Collector {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(SchemaViolation {
            path: path.into(),
            message: message.into(),
        });
    }
}

fn mat_from_rows(rows: &[Vec<f64>], n_rows: usize, n_cols: usize) -> Option<Mat> {
    if rows.len() != n_rows || rows.iter().any(|r| r.len() != n_cols) {
        return None;
    }
    Some(Mat::from_fn(n_rows, n_cols, |r, c| rows[r][c]))
}

fn blocks_from_spec(
    k: &[Vec<f64>],
    l: &[Vec<f64>],
    m: &[Vec<f64>],
    n: &[Vec<f64>],
    tau: f64,
) -> std::result::Result<SBlocks, String> {
    let n_out = k.len();
    let n_in = k.first().map_or(0, |r| r.len());
    let n_stub = n.len();
    let k = mat_from_rows(k, n_out, n_in).ok_or("k rows have unequal lengths")?;
    let (l, m, n) = if n_stub == 0 {
        if !(l.iter().all(|r| r.is_empty()) && m.is_empty()) {
            return Err("l and m must be empty when n is empty".into());
        }
        (Mat::zeros(n_out, 0), Mat::zeros(0, n_in), Mat::zeros(0, 0))
    } else {
        (
            mat_from_rows(l, n_out, n_stub).ok_or("l must be n_out x n_stub")?,
            mat_from_rows(m, n_stub, n_in).ok_or("m must be n_stub x n_in")?,
            mat_from_rows(n, n_stub, n_stub).ok_or("n must be n_stub x n_stub")?,
        )
    };
    if n_in != n_out {
        return Err(format!("k must be square, got {n_out}x{n_in}"));
    }
    let b = SBlocks::new(k, l, m, n, tau).map_err(|e| e.to_string())?;
    if [&b.k, &b.l, &b.m, &b.n]
        .iter()
        .any(|x| !crate::linalg::is_finite(x))
    {
        return Err("non-finite block entry".into());
    }
    Ok(b)
}

impl SimulationConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn eps0_mu0(&self) -> (f64, f64) {
        self.normalization.map_or((1.0, 1.0), |n| (n.eps0, n.mu0))
    }

    /// Speed of light used for particles lacking an explicit `c0`.
    pub fn light_speed(&self) -> f64 {
        match self.normalization {
            Some(Normalization { c0: Some(c), .. }) => c,
            Some(n) => 1.0 / (n.eps0 * n.mu0).sqrt(),
            None => C0_SI,
        }
    }

    fn check_units(&self) -> std::result::Result<(), ConfigError> {
        if let Some(n) = self.normalization {
            for (name, v) in [("eps0", n.eps0), ("mu0", n.mu0)] {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(ConfigError::Unit {
                        path: format!("normalization.{name}"),
                        message: format!("must be positive and finite, got {v}"),
                    });
                }
            }
            if let Some(c) = n.c0 {
                let implied = 1.0 / (n.eps0 * n.mu0).sqrt();
                if !((c - implied).abs() <= 1e-9 * implied) {
                    return Err(ConfigError::Unit {
                        path: "normalization.c0".into(),
                        message: format!("c0 = {c} contradicts 1/sqrt(eps0 mu0) = {implied}"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Validates and builds mesh, cells and excitation.
    ///
    /// Structural problems are collected as schema violations; assembly
    /// failures of admissible input (e.g. an unstable admittance) surface as
    /// the underlying engine error.
    pub fn assemble(&self) -> Result<Assembled> {
        let (mesh, cells, excitation) = self.assemble_parts()?;
        Ok(Assembled {
            mesh,
            cells: cells.into_iter().collect::<Result<Vec<_>>>()?,
            excitation,
            particles: self.particles,
        })
    }

    /// Like [`assemble`](Self::assemble) but keeps per-cell assembly failures.
    pub fn assemble_parts(&self) -> Result<(Mesh, Vec<Result<CellModel>>, Excitation)> {
        self.check_units().map_err(TlmError::Config)?;
        let mut v = Collector(Vec::new());
        if self.schema_version != SCHEMA_VERSION {
            v.push(
                "schema_version",
                format!(
                    "unsupported version {}, expected {SCHEMA_VERSION}",
                    self.schema_version
                ),
            );
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            v.push(
                "tau",
                format!("time step must be positive, got {}", self.tau),
            );
        }
        if self.cells.is_empty() {
            v.push("cells", "at least one cell is required");
        }
        if let Some(p) = &self.particles {
            if let Err(e) = p.validate() {
                v.push("particles", e.to_string());
            }
        }
        let tau = if self.tau > 0.0 && self.tau.is_finite() {
            self.tau
        } else {
            1.0
        };
        let (eps0, mu0) = self.eps0_mu0();

        let mut port_counts = Vec::with_capacity(self.cells.len());
        let mut pending: Vec<Option<CellPending>> = Vec::with_capacity(self.cells.len());
        for (i, cell) in self.cells.iter().enumerate() {
            let path = format!("cells[{i}]");
            match cell {
                CellSpec::Maxwell {
                    b_rows,
                    eps,
                    mu,
                    kappa_e,
                    kappa_m,
                    y,
                    y_dual,
                    particles,
                } => {
                    port_counts.push(if particles.is_some() {
                        CoupledCell::PORTS
                    } else {
                        6
                    });
                    let geometry = match HexGeometry::from_rows(*b_rows) {
                        Ok(g) => Some(g),
                        Err(e) => {
                            v.push(format!("{path}.b_rows"), e.to_string());
                            None
                        }
                    };
                    let materials = match Materials::new(
                        eps.to_mat() * eps0,
                        mu.to_mat() * mu0,
                        kappa_e.to_mat(),
                        kappa_m.to_mat(),
                    ) {
                        Ok(m) => Some(m),
                        Err(TlmError::InvalidMaterial { name, reason }) => {
                            v.push(format!("{path}.{name}"), reason);
                            None
                        }
                        Err(e) => {
                            v.push(path.clone(), e.to_string());
                            None
                        }
                    };
                    for (name, val) in [("y", *y), ("y_dual", *y_dual)] {
                        if !(val > 0.0 && val.is_finite()) {
                            v.push(
                                format!("{path}.{name}"),
                                format!("admittance must be positive, got {val}"),
                            );
                        }
                    }
                    let state = match particles {
                        None => None,
                        Some(p) => {
                            let vel = V3::new(p.velocity[0], p.velocity[1], p.velocity[2]);
                            match &self.particles {
                                None => v.push(
                                    format!("{path}.particles"),
                                    "cell carries particles but no particle parameters are given",
                                ),
                                Some(params) => {
                                    if !(vel.norm() < params.c0) {
                                        v.push(
                                            format!("{path}.particles.velocity"),
                                            format!(
                                                "|v| = {} must be below c0 = {}",
                                                vel.norm(),
                                                params.c0
                                            ),
                                        );
                                    }
                                    if params.q0 == 0.0 && p.charge != 0.0 {
                                        v.push(
                                            format!("{path}.particles.charge"),
                                            "charge must be zero when q0 = 0",
                                        );
                                    }
                                }
                            }
                            if !p.charge.is_finite() {
                                v.push(format!("{path}.particles.charge"), "not finite");
                            }
                            Some(ParticleState::new(p.charge, vel))
                        }
                    };
                    pending.push(match (geometry, materials) {
                        (Some(g), Some(m)) => Some(CellPending::Maxwell {
                            geometry: g,
                            materials: m,
                            y: *y,
                            y_dual: *y_dual,
                            state,
                        }),
                        _ => None,
                    });
                }
                CellSpec::Blocks { k, l, m, n } => match blocks_from_spec(k, l, m, n, tau) {
                    Ok(b) => {
                        port_counts.push(b.n_in());
                        pending.push(Some(CellPending::Blocks(b)));
                    }
                    Err(msg) => {
                        port_counts.push(k.len());
                        v.push(path, msg);
                        pending.push(None);
                    }
                },
            }
        }

        let mut mesh = Mesh::new(port_counts, tau)?;
        let global = |v: &mut Collector, path: String, r: &PortRef| -> Option<usize> {
            match mesh.port_index(r[0], r[1]) {
                Ok(p) => Some(p),
                Err(_) => {
                    v.push(path, format!("port [{}, {}] does not exist", r[0], r[1]));
                    None
                }
            }
        };
        let mut link_pairs = Vec::new();
        for (i, l) in self.links.iter().enumerate() {
            let a = global(&mut v, format!("links[{i}].a"), &l.a);
            let b = global(&mut v, format!("links[{i}].b"), &l.b);
            if let (Some(a), Some(b)) = (a, b) {
                if a == b {
                    v.push(format!("links[{i}]"), "self-paired port");
                } else {
                    link_pairs.push((i, a, b));
                }
            }
        }
        let mut bounds = Vec::new();
        for (i, b) in self.boundaries.iter().enumerate() {
            if let Some(p) = global(&mut v, format!("boundaries[{i}].port"), &b.port) {
                let r = b.reflection.value();
                if !(r.re.is_finite() && r.im.is_finite()) {
                    v.push(format!("boundaries[{i}].reflection"), "not finite");
                }
                bounds.push((p, r));
            }
        }
        let mut excitation = Excitation::new();
        for (i, e) in self.excitations.iter().enumerate() {
            if let Some(p) = global(&mut v, format!("excitations[{i}].port"), &e.port) {
                excitation.entries.insert(p, e.signal.clone());
            }
        }
        let mut used = vec![false; mesh.num_ports()];
        for &(i, a, b) in &link_pairs {
            for p in [a, b] {
                if used[p] {
                    v.push(format!("links[{i}]"), format!("port {p} is linked twice"));
                }
                used[p] = true;
            }
            mesh.link(a, b)?;
        }
        for &(p, r) in &bounds {
            if used[p] {
                v.push(
                    "boundaries",
                    format!("port {p} is both linked and a boundary"),
                );
            }
            mesh.set_boundary(p, r)?;
        }
        if let Some(r) = self.default_boundary {
            mesh.close_open_ports(r.value());
        }
        for viol in mesh.validate() {
            let path = match viol.port.and_then(|p| mesh.locate(p)) {
                Some((c, l)) => format!("ports[{c}, {l}]"),
                None => "links".into(),
            };
            v.push(path, viol.message);
        }
        if let Err(e) = excitation.validate(&mesh) {
            v.push("excitations", e.to_string());
        }

        self.check_run(&mut v, &mesh, &pending);

        if !v.0.is_empty() {
            return Err(TlmError::Config(ConfigError::Schema(v.0)));
        }

        let cells = pending
            .into_iter()
            .map(|p| match p.expect("violations were reported") {
                CellPending::Blocks(b) => Ok(CellModel::Blocks(b)),
                CellPending::Maxwell {
                    geometry,
                    materials,
                    y,
                    y_dual,
                    state,
                } => Ok(CellModel::Maxwell {
                    cell: Box::new(MaxwellCell::new(geometry, materials, tau, y, y_dual)?),
                    particles: state,
                }),
            })
            .collect();
        Ok((mesh, cells, excitation))
    }

    fn check_run(&self, v: &mut Collector, mesh: &Mesh, pending: &[Option<CellPending>]) {
        let coupled = pending
            .iter()
            .flatten()
            .any(|p| matches!(p, CellPending::Maxwell { state: Some(_), .. }));
        let check_sparams = |v: &mut Collector, sp: &Option<SParamConfig>| {
            if let Some(sp) = sp {
                let groups = std::iter::once(("run.sparams.input".to_string(), &sp.input.ports))
                    .chain(
                        sp.outputs
                            .iter()
                            .enumerate()
                            .map(|(i, o)| (format!("run.sparams.outputs[{i}]"), &o.ports)),
                    );
                for (path, ports) in groups {
                    if ports.is_empty() {
                        v.push(path.clone(), "port group is empty");
                    }
                    for r in ports {
                        if mesh.port_index(r[0], r[1]).is_err() {
                            v.push(
                                path.clone(),
                                format!("port [{}, {}] does not exist", r[0], r[1]),
                            );
                        }
                    }
                }
            }
        };
        let check_freq = |v: &mut Collector, f: f64, tol: f64, path: String| {
            if !(f >= 0.0 && f.is_finite()) {
                v.push(path, format!("frequency must be finite and >= 0, got {f}"));
            }
            if !(tol > 0.0) {
                v.push("run.tol", format!("tolerance must be positive, got {tol}"));
            }
        };
        match &self.run {
            RunSpec::Time {
                steps,
                probes,
                record_every,
            } => {
                if *steps == 0 {
                    v.push("run.steps", "at least one step is required");
                }
                if *record_every == 0 {
                    v.push("run.record_every", "must be >= 1");
                }
                for (i, p) in probes.iter().enumerate() {
                    if mesh.port_index(p.cell, p.port).is_err() {
                        v.push(format!("run.probes[{i}]"), "probe port does not exist");
                    }
                }
                if mesh.has_complex_boundaries() {
                    v.push(
                        "boundaries",
                        "time-domain runs need real reflection coefficients",
                    );
                }
                for (i, e) in self.excitations.iter().enumerate() {
                    if matches!(e.signal, Signal::Phasor { .. }) {
                        v.push(
                            format!("excitations[{i}].signal"),
                            "phasor signals are only valid in frequency runs",
                        );
                    }
                }
            }
            RunSpec::Frequency {
                frequency,
                tol,
                sparams,
                ..
            } => {
                check_freq(v, *frequency, *tol, "run.frequency".into());
                check_sparams(v, sparams);
            }
            RunSpec::Sweep {
                frequencies,
                tol,
                sparams,
                ..
            } => {
                if frequencies.is_empty() {
                    v.push("run.frequencies", "at least one frequency is required");
                }
                for (i, f) in frequencies.iter().enumerate() {
                    check_freq(v, *f, *tol, format!("run.frequencies[{i}]"));
                }
                check_sparams(v, sparams);
            }
        }
        if coupled && !matches!(self.run, RunSpec::Time { .. }) {
            v.push(
                "run.mode",
                "cells with particles are non-linear and only support time runs",
            );
        }
    }

    pub fn time_run(&self) -> Option<TimeRunConfig> {
        match &self.run {
            RunSpec::Time {
                steps,
                probes,
                record_every,
            } => {
                let mut cfg = TimeRunConfig::new(
                    *steps,
                    probes
                        .iter()
                        .map(|p| Probe {
                            cell: p.cell,
                            port: p.port,
                            quantity: p.quantity,
                        })
                        .collect(),
                );
                cfg.record_every = *record_every;
                Some(cfg)
            }
            _ => None,
        }
    }

    /// Frequency run settings, one per frequency (a single one for `frequency` mode).
    pub fn freq_runs(&self) -> Vec<(f64, FreqRunConfig)> {
        let mk = |f: f64, tol: f64, max_iter: usize, ramp: usize| {
            let mut c = FreqRunConfig::from_frequency(f);
            c.tol = tol;
            c.max_iter = max_iter;
            c.ramp_iters = ramp;
            (f, c)
        };
        match &self.run {
            RunSpec::Frequency {
                frequency,
                tol,
                max_iter,
                ramp_iters,
                ..
            } => vec![mk(*frequency, *tol, *max_iter, *ramp_iters)],
            RunSpec::Sweep {
                frequencies,
                tol,
                max_iter,
                ramp_iters,
                ..
            } => frequencies
                .iter()
                .map(|&f| mk(f, *tol, *max_iter, *ramp_iters))
                .collect(),
            RunSpec::Time { .. } => Vec::new(),
        }
    }

    /// S-parameter groups translated to global port indices.
    pub fn sparam_spec(&self, mesh: &Mesh) -> Result<Option<SParamSpec>> {
        let sp = match &self.run {
            RunSpec::Frequency { sparams, .. } | RunSpec::Sweep { sparams, .. } => sparams,
            RunSpec::Time { .. } => return Ok(None),
        };
        let Some(sp) = sp else {
            return Ok(None);
        };
        let group = |ports: &[PortRef], weights: &[f64]| -> Result<PortGroup> {
            Ok(PortGroup {
                ports: ports
                    .iter()
                    .map(|r| mesh.port_index(r[0], r[1]))
                    .collect::<Result<_>>()?,
                weights: weights.to_vec(),
            })
        };
        Ok(Some(SParamSpec {
            input: group(&sp.input.ports, &sp.input.weights)?,
            outputs: sp
                .outputs
                .iter()
                .map(|o| Ok((o.name.clone(), group(&o.ports, &o.weights)?)))
                .collect::<Result<_>>()?,
        }))
    }
}

enum CellPending {
    Maxwell {
        geometry: HexGeometry,
        materials: Materials,
        y: f64,
        y_dual: f64,
        state: Option<ParticleState>,
    },
    Blocks(SBlocks),
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<SimulationConfig> {
    let cfg: SimulationConfig = serde_json::from_str(text)
        .map_err(|e| TlmError::Config(ConfigError::Syntax(e.to_string())))?;
    match cfg.assemble() {
        Ok(_) => Ok(cfg),
        // an admissible config may still describe an unstable cell; `check` reports it
        Err(TlmError::StubSqrtDomain { .. }) => Ok(cfg),
        Err(e) => Err(e),
    }
}
