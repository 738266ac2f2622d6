//! Command dispatch behind the `tlm` binary.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{CellModel, SimulationConfig};
use crate::error::{Result, TlmError};
use crate::linalg::{spectral_radius, Vector};
use crate::output::{
    freq_ports_table, freq_trace_table, sparam_columns, sparam_fields, time_trace_table, write_csv,
    Field, Table,
};
use crate::solvers::{
    extract_sparams, run_freq_domain, run_time_domain, FreqRunConfig, FreqSolution, Probe,
    Quantity, SParamSpec,
};

#[derive(Debug, Clone, PartialEq, Eq, clap::Subcommand)]
pub enum Command {
    /// March the mesh in time and record probe traces.
    RunTime,
    /// Solve the steady state at the configured frequency.
    RunFreq,
    /// One frequency-domain solve per configured frequency.
    Sweep,
    /// Impulse response of a single cell.
    Impulse {
        #[arg(long, default_value_t = 0)]
        cell: usize,
        #[arg(long, default_value_t = 0)]
        port: usize,
        #[arg(long, default_value_t = 50)]
        steps: usize,
    },
    /// Per-cell stability report.
    Check,
    /// Mesh connectivity report.
    Validate,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::RunTime => "run-time",
            Command::RunFreq => "run-freq",
            Command::Sweep => "sweep",
            Command::Impulse { .. } => "impulse",
            Command::Check => "check",
            Command::Validate => "validate",
        }
    }
}

/// Machine-readable summary of a successful command.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub command: &'static str,
    pub artifacts: Vec<String>,
    pub seed: Option<u64>,
    pub messages: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<crate::config::SchemaViolation>,
}

impl From<&TlmError> for ErrorRecord {
    fn from(e: &TlmError) -> Self {
        ErrorRecord {
            kind: e.kind().to_string(),
            message: e.to_string(),
            exit_code: e.exit_code(),
            violations: match e {
                TlmError::Config(c) => c.violations(),
                _ => Vec::new(),
            },
        }
    }
}

/// Stability verdict of one cell.
#[derive(Debug, Clone, Serialize)]
pub struct CellStability {
    pub cell: usize,
    pub kind: &'static str,
    pub spectral_radius: f64,
    pub margin: f64,
    pub admitted: bool,
}

impl CellStability {
    pub fn describe(&self) -> String {
        format!(
            "cell {} ({}): {}, margin {:?}, spectral radius {:?}",
            self.cell,
            self.kind,
            if self.admitted { "stable" } else { "rejected" },
            self.margin,
            self.spectral_radius
        )
    }
}

fn stub_radius(model: &CellModel) -> Result<f64> {
    match model {
        CellModel::Maxwell { cell, .. } => Ok(cell.stub_radius()),
        CellModel::Blocks(b) if b.n_stub() == 0 => Ok(0.0),
        CellModel::Blocks(b) => spectral_radius(&b.n),
    }
}

/// Spectral radius of the stub operator of every cell.
pub fn stability_report(config: &SimulationConfig) -> Result<Vec<CellStability>> {
    let (_, cells, _) = config.assemble_parts()?;
    cells
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let (kind, rho) = match c {
                Ok(m) => (m.kind(), stub_radius(&m)?),
                Err(TlmError::StubSqrtDomain { spectral_radius }) => ("maxwell", spectral_radius),
                Err(e) => return Err(e),
            };
            Ok(CellStability {
                cell: i,
                kind,
                spectral_radius: rho,
                margin: 1.0 - rho,
                admitted: rho < 1.0,
            })
        })
        .collect()
}

fn gate(config: &SimulationConfig) -> Result<()> {
    for c in stability_report(config)? {
        if !c.admitted {
            return Err(TlmError::Unstable {
                cell: c.cell,
                spectral_radius: c.spectral_radius,
            });
        }
    }
    Ok(())
}

struct Out<'a> {
    dir: &'a Path,
    prefix: String,
    artifacts: Vec<String>,
}

impl Out<'_> {
    fn write(&mut self, name: &str, table: &Table) -> Result<()> {
        let path: PathBuf = self.dir.join(format!("{}{name}", self.prefix));
        write_csv(table, &path)?;
        self.artifacts.push(path.display().to_string());
        Ok(())
    }
}

/// Runs `command` on a parsed configuration, writing CSV artifacts into `out_dir`.
pub fn dispatch(
    command: &Command,
    config: &SimulationConfig,
    out_dir: &Path,
    seed: Option<u64>,
) -> Result<Summary> {
    fs::create_dir_all(out_dir)?;
    let mut out = Out {
        dir: out_dir,
        prefix: config.output.prefix.clone().unwrap_or_default(),
        artifacts: Vec::new(),
    };
    let mut messages = Vec::new();
    match command {
        Command::RunTime => run_time(config, &mut out)?,
        Command::RunFreq | Command::Sweep => run_freq(config, &mut out, &mut messages)?,
        Command::Impulse { cell, port, steps } => impulse(config, &mut out, *cell, *port, *steps)?,
        Command::Check => {
            let report = stability_report(config)?;
            let mut t = Table::new(
                ["cell", "kind", "spectral_radius", "margin", "status"]
                    .map(String::from)
                    .to_vec(),
            );
            for c in &report {
                t.push(vec![
                    Field::from(c.cell),
                    Field::from(c.kind),
                    Field::Float(c.spectral_radius),
                    Field::Float(c.margin),
                    Field::from(if c.admitted { "admitted" } else { "rejected" }),
                ]);
                messages.push(c.describe());
            }
            out.write("check.csv", &t)?;
            if let Some(bad) = report.iter().find(|c| !c.admitted) {
                return Err(TlmError::Unstable {
                    cell: bad.cell,
                    spectral_radius: bad.spectral_radius,
                });
            }
        }
        Command::Validate => {
            let (mesh, _, _) = config.assemble_parts()?;
            let mut t = Table::new(
                ["port", "cell", "local", "partner", "rho_re", "rho_im"]
                    .map(String::from)
                    .to_vec(),
            );
            for p in 0..mesh.num_ports() {
                let (c, l) = mesh.locate(p).expect("port in range");
                let partner = mesh
                    .partner(p)
                    .map_or(Field::Text(String::new()), Field::from);
                let (re, im) = match mesh.boundary(p) {
                    Some(r) => (Field::Float(r.re), Field::Float(r.im)),
                    None => (Field::Text(String::new()), Field::Text(String::new())),
                };
                t.push(vec![
                    Field::from(p),
                    Field::from(c),
                    Field::from(l),
                    partner,
                    re,
                    im,
                ]);
            }
            out.write("mesh.csv", &t)?;
            messages.push(format!(
                "mesh valid: {} cells, {} ports",
                mesh.num_cells(),
                mesh.num_ports()
            ));
        }
    }
    Ok(Summary {
        command: command.name(),
        artifacts: out.artifacts,
        seed,
        messages,
    })
}

fn run_time(config: &SimulationConfig, out: &mut Out) -> Result<()> {
    let mut run = config
        .time_run()
        .ok_or_else(|| mode_error("run-time", "time"))?;
    gate(config)?;
    let a = config.assemble()?;
    if run.probes.is_empty() {
        for c in 0..a.mesh.num_cells() {
            for p in 0..a.mesh.port_counts()[c] {
                run.probes.push(Probe {
                    cell: c,
                    port: p,
                    quantity: Quantity::Outgoing,
                });
            }
        }
    }
    let mut cells = a.time_cells()?;
    let trace = run_time_domain(&a.mesh, &mut cells, &a.excitation, &run)?;
    out.write("time.csv", &time_trace_table(&trace))
}

fn mode_error(command: &str, mode: &str) -> TlmError {
    TlmError::Config(crate::config::ConfigError::Schema(vec![
        crate::config::SchemaViolation {
            path: "run.mode".into(),
            message: format!("`{command}` needs a `{mode}` run section"),
        },
    ]))
}

fn solve_one(
    config: &SimulationConfig,
    run: &FreqRunConfig,
    spec: Option<&SParamSpec>,
) -> Result<FreqSolution> {
    let a = config.assemble()?;
    let theta = run.omega * a.mesh.tau();
    let condensed = a
        .cells
        .iter()
        .map(|c| c.blocks().freq_condense(theta))
        .collect::<Result<Vec<_>>>()?;
    let exc = a.excitation.phasors(a.mesh.num_ports());
    run_freq_domain(&a.mesh, &condensed, &exc, run, spec)
}

fn run_freq(config: &SimulationConfig, out: &mut Out, messages: &mut Vec<String>) -> Result<()> {
    let runs = config.freq_runs();
    if runs.is_empty() {
        return Err(mode_error("run-freq", "frequency` or `sweep"));
    }
    gate(config)?;
    let a = config.assemble()?;
    let spec = config.sparam_spec(&a.mesh)?;
    let names: Vec<String> = spec
        .as_ref()
        .map(|s| s.outputs.iter().map(|(n, _)| n.clone()).collect())
        .unwrap_or_default();

    let mut header: Vec<String> = ["frequency", "omega", "iterations", "residual", "converged"]
        .map(String::from)
        .to_vec();
    header.extend(sparam_columns(&names));
    let mut summary = Table::new(header);
    let single = runs.len() == 1;
    let mut first_failure = None;
    for (k, (f, run)) in runs.iter().enumerate() {
        let (sol, failure) = match solve_one(config, run, spec.as_ref()) {
            Ok(s) => (s, None),
            Err(TlmError::MaxIterExceeded { best }) => {
                let s = (*best).clone();
                (s, Some(TlmError::MaxIterExceeded { best }))
            }
            Err(e) => return Err(e),
        };
        let tag = if single {
            String::new()
        } else {
            format!("_{k}")
        };
        out.write(
            &format!("freq_trace{tag}.csv"),
            &freq_trace_table(&sol, &names),
        )?;
        out.write(
            &format!("freq_ports{tag}.csv"),
            &freq_ports_table(&sol, |p| a.mesh.locate(p).expect("port in range")),
        )?;
        let sp = match &spec {
            Some(s) => extract_sparams(&sol, s)?,
            None => Vec::new(),
        };
        let mut row = vec![
            Field::Float(*f),
            Field::Float(sol.omega),
            Field::from(sol.iterations),
            Field::Float(sol.residual),
            Field::Int(sol.converged as i64),
        ];
        row.extend(sparam_fields(&sp));
        summary.push(row);
        messages.push(format!(
            "f = {f:e}: {} iterations, residual {:e}",
            sol.iterations, sol.residual
        ));
        if first_failure.is_none() {
            first_failure = failure;
        }
    }
    out.write(if single { "freq.csv" } else { "sweep.csv" }, &summary)?;
    match first_failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn impulse(
    config: &SimulationConfig,
    out: &mut Out,
    cell: usize,
    port: usize,
    steps: usize,
) -> Result<()> {
    let a = config.assemble()?;
    let blocks = a
        .cells
        .get(cell)
        .ok_or_else(|| TlmError::LayoutMismatch(format!("no cell {cell}")))?
        .blocks();
    if port >= blocks.n_in() {
        return Err(TlmError::LayoutMismatch(format!(
            "cell {cell} has {} ports, asked for port {port}",
            blocks.n_in()
        )));
    }
    let mut z0 = Vector::zeros(blocks.n_in());
    z0[port] = 1.0;
    let resp = blocks.impulse_response(&z0, steps)?;
    let mut header = vec!["step".to_string()];
    header.extend((0..blocks.n_out()).map(|i| format!("out_{i}")));
    let mut t = Table::new(header);
    for (s, r) in resp.iter().enumerate() {
        let mut row = vec![Field::from(s)];
        row.extend(r.iter().map(|&x| Field::Float(x)));
        t.push(row);
    }
    out.write("impulse.csv", &t)
}
