//! A sheared, lossy hexahedral cell: admittance bound, stub radius, and the
//! condensed matrix singular values (one for the lossless cell, below one with loss).
//!
//! cargo run --example maxwell_cell

use tlm_core::linalg::Vector;
use tlm_core::maxwell::admittance_bound;
use tlm_core::{HexGeometry, Materials, MaxwellCell};

fn main() -> tlm_core::Result<()> {
    let geometry = HexGeometry::from_rows([[1.0, 0.2, 0.0], [0.0, 0.9, 0.1], [0.0, 0.0, 1.1]])?;
    let tau = 0.5;
    for kappa in [0.0, 0.4] {
        let materials = Materials::isotropic(2.0, 1.0, kappa, 0.0)?;
        let y_max = admittance_bound(&geometry, &materials.eps, tau)?;
        let yd_max = admittance_bound(&geometry, &materials.mu, tau)?;
        let cell = MaxwellCell::new(geometry.clone(), materials, tau, 0.5 * y_max, 0.5 * yd_max)?;
        println!(
            "kappa_e = {kappa}: y bound {y_max:.4}, stub radius {:.4}",
            cell.stub_radius()
        );
        let sv = cell.smatrix().freq_condense(0.7)?.singular_values();
        println!("  singular values at theta 0.7: {:.6}", sv.transpose());
    }

    let cube = MaxwellCell::new(
        HexGeometry::unit_cube(),
        Materials::vacuum_normalized(),
        1.0,
        0.25,
        0.25,
    )?;
    let resp = cube
        .smatrix()
        .impulse_response(&Vector::from_vec(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]), 3)?;
    println!(
        "unit cube, y = 1/4: K = 0, N = 0, response {:?}",
        resp.iter().map(|r| r[0]).collect::<Vec<_>>()
    );
    Ok(())
}
