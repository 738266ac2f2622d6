//! CSV artifacts.
//!
//! Floats are written as `{:.16e}` (17 significant digits), which is enough
//! for an exact round trip through any conforming reader.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::solvers::{FreqSolution, SParam, TimeTrace};

#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Field {
    pub fn render(&self) -> String {
        match self {
            Field::Int(i) => i.to_string(),
            Field::Float(x) => format_float(*x),
            Field::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Field {
    fn from(x: f64) -> Self {
        Field::Float(x)
    }
}

impl From<usize> for Field {
    fn from(i: usize) -> Self {
        Field::Int(i as i64)
    }
}

impl From<&str> for Field {
    fn from(s: &str) -> Self {
        Field::Text(s.to_string())
    }
}

pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// A header plus homogeneous rows.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Field>>,
}

impl Table {
    pub fn new(header: Vec<String>) -> Self {
        Table {
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Field>) {
        assert_eq!(
            row.len(),
            self.header.len(),
            "row width differs from header"
        );
        self.rows.push(row);
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Field::render))?;
        }
        w.flush()?;
        Ok(w.into_inner().map_err(|e| e.into_error())?)
    }
}

pub fn write_csv(table: &Table, path: &Path) -> Result<()> {
    let bytes = table.to_csv_bytes()?;
    let mut f = File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn time_trace_table(trace: &TimeTrace) -> Table {
    let mut t = Table::new(trace.header());
    for (step, row) in trace.steps.iter().zip(&trace.values) {
        let mut r = vec![Field::from(*step)];
        r.extend(row.iter().map(|&x| Field::Float(x)));
        t.push(r);
    }
    t
}

/// Convergence trace: `iteration, residual, <name>_dB...`.
pub fn freq_trace_table(solution: &FreqSolution, names: &[String]) -> Table {
    let mut header = vec!["iteration".to_string(), "residual".to_string()];
    header.extend(names.iter().map(|n| format!("{n}_dB")));
    let mut t = Table::new(header);
    for row in &solution.trace {
        let mut r = vec![Field::from(row.iteration), Field::Float(row.residual)];
        r.extend(row.sparams_db.iter().map(|&x| Field::Float(x)));
        t.push(r);
    }
    t
}

/// Port phasors: `port, cell, local, in_re, in_im, out_re, out_im`.
pub fn freq_ports_table(
    solution: &FreqSolution,
    locate: impl Fn(usize) -> (usize, usize),
) -> Table {
    let mut t = Table::new(
        [
            "port", "cell", "local", "in_re", "in_im", "out_re", "out_im",
        ]
        .map(String::from)
        .to_vec(),
    );
    for p in 0..solution.z_in.len() {
        let (c, l) = locate(p);
        t.push(vec![
            Field::from(p),
            Field::from(c),
            Field::from(l),
            Field::Float(solution.z_in[p].re),
            Field::Float(solution.z_in[p].im),
            Field::Float(solution.z_out[p].re),
            Field::Float(solution.z_out[p].im),
        ]);
    }
    t
}

pub fn sparam_columns(names: &[String]) -> Vec<String> {
    names
        .iter()
        .flat_map(|n| [format!("{n}_re"), format!("{n}_im"), format!("{n}_dB")])
        .collect()
}

pub fn sparam_fields(sp: &[SParam]) -> Vec<Field> {
    sp.iter()
        .flat_map(|s| {
            [
                Field::Float(s.value.re),
                Field::Float(s.value.im),
                Field::Float(s.db),
            ]
        })
        .collect()
}
