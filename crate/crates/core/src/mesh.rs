//! Connection map between cell ports, boundary reflections and sources.
//!
//! Global port index = cell offset + local port index, cells in order.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TlmError};
use crate::linalg::{CVector, Vector, C64};

/// Port value types the connection map can act on.
pub trait Wave: nalgebra::Scalar + Copy + std::ops::Add<Output = Self> {
    fn zero() -> Self;
    fn reflect(self, rho: C64) -> Self;
}

impl Wave for f64 {
    fn zero() -> Self {
        0.0
    }

    /// Real runs use the real part; configs with complex reflections are
    /// rejected before a time-domain run.
    fn reflect(self, rho: C64) -> Self {
        self * rho.re
    }
}

impl Wave for C64 {
    fn zero() -> Self {
        C64::new(0.0, 0.0)
    }

    fn reflect(self, rho: C64) -> Self {
        self * rho
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    port_counts: Vec<usize>,
    offsets: Vec<usize>,
    partner: Vec<Option<usize>>,
    boundary: BTreeMap<usize, C64>,
    tau: f64,
}

/// One problem found by [`Mesh::validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MeshViolation {
    pub port: Option<usize>,
    pub message: String,
}

impl fmt::Display for MeshViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.port {
            Some(p) => write!(f, "port {p}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl Mesh {
    pub fn new(port_counts: Vec<usize>, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(TlmError::InvalidTimeStep(tau));
        }
        let mut offsets = Vec::with_capacity(port_counts.len());
        let mut acc = 0;
        for &n in &port_counts {
            offsets.push(acc);
            acc += n;
        }
        Ok(Self {
            port_counts,
            offsets,
            partner: vec![None; acc],
            boundary: BTreeMap::new(),
            tau,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn num_cells(&self) -> usize {
        self.port_counts.len()
    }

    pub fn num_ports(&self) -> usize {
        self.partner.len()
    }

    pub fn port_counts(&self) -> &[usize] {
        &self.port_counts
    }

    pub fn offset(&self, cell: usize) -> usize {
        self.offsets[cell]
    }

    pub fn port_index(&self, cell: usize, local: usize) -> Result<usize> {
        if cell >= self.num_cells() || local >= self.port_counts[cell] {
            return Err(TlmError::LayoutMismatch(format!(
                "port ({cell}, {local}) does not exist"
            )));
        }
        Ok(self.offsets[cell] + local)
    }

    /// Splits a global port index into `(cell, local)`.
    pub fn locate(&self, port: usize) -> Option<(usize, usize)> {
        if port >= self.num_ports() {
            return None;
        }
        let cell = self.offsets.partition_point(|&o| o <= port) - 1;
        // skip zero-port cells sharing the offset
        let cell = (cell..self.num_cells())
            .find(|&c| port < self.offsets[c] + self.port_counts[c])
            .unwrap_or(cell);
        Some((cell, port - self.offsets[cell]))
    }

    fn check_port(&self, p: usize) -> Result<()> {
        if p >= self.num_ports() {
            return Err(TlmError::LayoutMismatch(format!(
                "port {p} out of range (mesh has {} ports)",
                self.num_ports()
            )));
        }
        Ok(())
    }

    /// Pairs two global ports. Re-linking a port overwrites its old pairing.
    pub fn link(&mut self, a: usize, b: usize) -> Result<()> {
        self.check_port(a)?;
        self.check_port(b)?;
        for p in [a, b] {
            if let Some(old) = self.partner[p].take() {
                self.partner[old] = None;
            }
            self.boundary.remove(&p);
        }
        self.partner[a] = Some(b);
        self.partner[b] = Some(a);
        Ok(())
    }

    /// Pairing without any checks, used to build invalid meshes on purpose.
    pub fn set_partner_raw(&mut self, a: usize, b: Option<usize>) {
        self.partner[a] = b;
    }

    pub fn set_boundary(&mut self, port: usize, rho: C64) -> Result<()> {
        self.check_port(port)?;
        if let Some(old) = self.partner[port].take() {
            self.partner[old] = None;
        }
        self.boundary.insert(port, rho);
        Ok(())
    }

    /// Every port that is not linked becomes a boundary with reflection `rho`.
    pub fn close_open_ports(&mut self, rho: C64) {
        for p in 0..self.num_ports() {
            if self.partner[p].is_none() && !self.boundary.contains_key(&p) {
                self.boundary.insert(p, rho);
            }
        }
    }

    pub fn partner(&self, port: usize) -> Option<usize> {
        self.partner.get(port).copied().flatten()
    }

    pub fn boundary(&self, port: usize) -> Option<C64> {
        self.boundary.get(&port).copied()
    }

    pub fn boundaries(&self) -> &BTreeMap<usize, C64> {
        &self.boundary
    }

    pub fn has_complex_boundaries(&self) -> bool {
        self.boundary.values().any(|r| r.im != 0.0)
    }

    /// Involution, coverage and consistency checks. Empty means valid.
    pub fn validate(&self) -> Vec<MeshViolation> {
        let mut out = Vec::new();
        let v = |port, message: &str| MeshViolation {
            port: Some(port),
            message: message.to_string(),
        };
        for p in 0..self.num_ports() {
            match (self.partner[p], self.boundary.contains_key(&p)) {
                (Some(q), _) if q == p => out.push(v(p, "self-paired port")),
                (Some(q), _) if q >= self.num_ports() => out.push(v(p, "partner out of range")),
                (Some(q), _) if self.partner[q] != Some(p) => {
                    out.push(v(p, "pairing is not an involution"))
                }
                (Some(_), true) => out.push(v(p, "port is both paired and a boundary")),
                (None, false) => out.push(v(p, "dangling port")),
                _ => {}
            }
        }
        for (&p, rho) in &self.boundary {
            if p >= self.num_ports() {
                out.push(v(p, "boundary port out of range"));
            }
            if !(rho.re.is_finite() && rho.im.is_finite()) {
                out.push(v(p, "non-finite reflection coefficient"));
            }
        }
        out
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_empty() {
            Ok(())
        } else {
            let msgs: Vec<String> = report.iter().map(|v| v.to_string()).collect();
            Err(TlmError::InvalidMesh(msgs.join("; ")))
        }
    }

    /// `z_in = C(z_out) + z_exc` on flat global port vectors.
    pub fn connect<T: Wave>(&self, z_out: &DVector<T>, z_exc: &DVector<T>) -> Result<DVector<T>> {
        let n = self.num_ports();
        for (v, ctx) in [(z_out, "outgoing"), (z_exc, "excitation")] {
            if v.len() != n {
                return Err(TlmError::LayoutMismatch(format!(
                    "{ctx} vector has {} entries, mesh has {n} ports",
                    v.len()
                )));
            }
        }
        let mut z_in = DVector::from_element(n, T::zero());
        for p in 0..n {
            z_in[p] = match self.partner[p] {
                Some(q) => z_out[q],
                None => match self.boundary.get(&p) {
                    Some(&rho) => z_out[p].reflect(rho) + z_exc[p],
                    None => z_exc[p],
                },
            };
        }
        Ok(z_in)
    }
}

/// Drive signal at a single port.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Signal {
    /// `amplitude` at step 0, zero afterwards.
    Impulse { amplitude: f64 },
    /// `amplitude` from step 0 on.
    Step { amplitude: f64 },
    /// `amplitude * cos(2 pi f t + phase)` with `t = step * tau`.
    Harmonic {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `amplitude * exp(-((step - center) / width)^2 / 2)`.
    Gaussian {
        amplitude: f64,
        center: f64,
        width: f64,
    },
    /// Explicit per-step values; zero past the end.
    Samples { values: Vec<f64> },
    /// Fixed complex amplitude for frequency-domain runs.
    Phasor { re: f64, im: f64 },
}

impl Signal {
    pub fn value(&self, step: usize, tau: f64) -> f64 {
        match self {
            Signal::Impulse { amplitude } => {
                if step == 0 {
                    *amplitude
                } else {
                    0.0
                }
            }
            Signal::Step { amplitude } => *amplitude,
            Signal::Harmonic {
                amplitude,
                frequency,
                phase,
            } => amplitude * (2.0 * PI * frequency * step as f64 * tau + phase).cos(),
            Signal::Gaussian {
                amplitude,
                center,
                width,
            } => {
                let x = (step as f64 - center) / width;
                amplitude * (-0.5 * x * x).exp()
            }
            Signal::Samples { values } => values.get(step).copied().unwrap_or(0.0),
            Signal::Phasor { re, .. } => *re,
        }
    }

    /// Complex amplitude for frequency-domain drives.
    pub fn phasor(&self) -> C64 {
        match self {
            Signal::Phasor { re, im } => C64::new(*re, *im),
            Signal::Harmonic {
                amplitude, phase, ..
            } => C64::from_polar(*amplitude, *phase),
            Signal::Impulse { amplitude }
            | Signal::Step { amplitude }
            | Signal::Gaussian { amplitude, .. } => C64::new(*amplitude, 0.0),
            Signal::Samples { values } => C64::new(values.first().copied().unwrap_or(0.0), 0.0),
        }
    }
}

/// Map from global boundary port to drive signal.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Excitation {
    pub entries: BTreeMap<usize, Signal>,
}

impl Excitation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, port: usize, signal: Signal) -> Self {
        self.entries.insert(port, signal);
        self
    }

    /// Sources must sit on existing boundary ports.
    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        for &p in self.entries.keys() {
            mesh.check_port(p)?;
            if mesh.partner(p).is_some() {
                return Err(TlmError::InvalidMesh(format!(
                    "excitation on port {p}, which is linked; sources belong on boundary ports"
                )));
            }
        }
        Ok(())
    }

    pub fn at_step(&self, step: usize, tau: f64, n_ports: usize) -> Vector {
        let mut v = Vector::zeros(n_ports);
        for (&p, s) in &self.entries {
            v[p] = s.value(step, tau);
        }
        v
    }

    pub fn phasors(&self, n_ports: usize) -> CVector {
        let mut v = CVector::zeros(n_ports);
        for (&p, s) in &self.entries {
            v[p] = s.phasor();
        }
        v
    }
}
