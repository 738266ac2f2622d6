//! A charged particle population inside a cube cell. The field is kicked once;
//! the particles respond and feed a convection current back into Ampere's law.
//!
//! cargo run --example plasma_cell

use tlm_core::linalg::Vector;
use tlm_core::plasma::V3;
use tlm_core::{CoupledCell, HexGeometry, Materials, MaxwellCell, ParticleParams, ParticleState};

fn main() -> tlm_core::Result<()> {
    let cell = MaxwellCell::new(
        HexGeometry::unit_cube(),
        Materials::vacuum_normalized(),
        1.0,
        0.2,
        0.2,
    )?;
    let params = ParticleParams::new(2.0, 0.05, 0.05, 10.0)?;
    let mut cc = CoupledCell::new(
        cell,
        params,
        ParticleState::new(2e-3, V3::new(0.2, 0.0, 0.0)),
    )?;

    println!("step  |v|         Ex          residual");
    for t in 0..60 {
        let mut z = Vector::zeros(CoupledCell::PORTS);
        if t == 0 {
            z[0] = 1.0;
            z[4] = 0.5;
        }
        cc.step(&z)?;
        if t % 6 == 0 {
            let (e, _) = cc.fields()?;
            println!(
                "{t:>4}  {:.6}  {:+.6}  {:.1e}",
                cc.state().v.norm(),
                e[0],
                cc.residual()
            );
        }
    }
    println!("cell charge stays at {:.6e}", cc.state().charge);
    Ok(())
}
