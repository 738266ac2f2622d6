//! A Gaussian pulse through a chain of five cells with matched ends.
//! Prints the probe trace as CSV.
//!
//! cargo run --example time_domain_mesh > trace.csv

use tlm_core::linalg::{Mat, C64};
use tlm_core::output::time_trace_table;
use tlm_core::solvers::{LinearCell, Probe, Quantity, TimeDomainCell};
use tlm_core::{run_time_domain, Excitation, Mesh, SBlocks, Signal, TimeRunConfig};

fn main() -> tlm_core::Result<()> {
    let cells = 5;
    let blocks = SBlocks::new(
        Mat::from_row_slice(2, 2, &[0.05, 0.7, 0.7, 0.05]),
        Mat::from_row_slice(2, 1, &[0.3, 0.3]),
        Mat::from_row_slice(1, 2, &[0.3, 0.3]),
        Mat::from_element(1, 1, 0.4),
        1.0,
    )?;
    let mut mesh = Mesh::new(vec![2; cells], 1.0)?;
    for c in 0..cells - 1 {
        mesh.link(mesh.port_index(c, 1)?, mesh.port_index(c + 1, 0)?)?;
    }
    mesh.close_open_ports(C64::new(0.0, 0.0));

    let mut units: Vec<Box<dyn TimeDomainCell>> = (0..cells)
        .map(|_| Ok(Box::new(LinearCell::new(blocks.clone())?) as Box<dyn TimeDomainCell>))
        .collect::<tlm_core::Result<_>>()?;
    let exc = Excitation::new().with(
        0,
        Signal::Gaussian {
            amplitude: 1.0,
            center: 12.0,
            width: 3.0,
        },
    );
    let probes = vec![
        Probe {
            cell: 0,
            port: 0,
            quantity: Quantity::Outgoing,
        },
        Probe {
            cell: 2,
            port: 1,
            quantity: Quantity::Total,
        },
        Probe {
            cell: cells - 1,
            port: 1,
            quantity: Quantity::Outgoing,
        },
    ];
    let trace = run_time_domain(&mesh, &mut units, &exc, &TimeRunConfig::new(80, probes))?;
    let csv = time_trace_table(&trace).to_csv_bytes()?;
    print!("{}", String::from_utf8_lossy(&csv));
    Ok(())
}
