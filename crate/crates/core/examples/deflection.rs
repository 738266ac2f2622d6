//! Deflecting a realized model equation so that it carries a source term.
//!
//! The base map solves `F = 0`; the deflected system solves `F = J` where `J`
//! reads the node history, and the residual is checked every step.
//!
//! cargo run --example deflection

use std::collections::BTreeMap;

use tlm_core::deflection::{realize_first_order, verify_deflection, LinearPerturbation};
use tlm_core::linalg::{Mat, Vector};
use tlm_core::{DeflectedSystem, LinkSplit, ModelForm};

fn main() -> tlm_core::Result<()> {
    // link space (a1, a2, b1, b2); the lead coefficient must act on b
    let split = LinkSplit::coordinate(2, 2);
    let model = ModelForm::new(2, 4)
        .with_phi(
            0,
            Mat::from_row_slice(2, 4, &[0.2, 0.0, 1.0, 0.1, 0.0, -0.3, 0.0, 1.2]),
        )?
        .with_phi(
            1,
            Mat::from_row_slice(2, 4, &[0.1, 0.0, -0.2, 0.0, 0.0, 0.1, 0.1, 0.3]),
        )?
        .with_psi(
            0,
            Mat::from_row_slice(2, 4, &[-0.5, 0.0, 0.0, 0.1, 0.0, -0.5, 0.0, 0.0]),
        )?;
    let base = realize_first_order(&model, &split, 1.0)?;
    println!("realized stub operator N =\n{}", base.n);

    let mut node = BTreeMap::new();
    node.insert(
        0,
        Mat::from_row_slice(2, 4, &[0.0, 0.05, 0.0, 0.0, -0.05, 0.0, 0.0, 0.0]),
    );
    let source = LinearPerturbation {
        node,
        port: BTreeMap::new(),
        constant: Vector::from_vec(vec![0.1, 0.0]),
    };
    let mut sys = DeflectedSystem::new(base, split, model, Box::new(source))?;
    let report = verify_deflection(
        &mut sys,
        |t| Vector::from_vec(vec![(0.2 * t as f64).sin(), 0.0]),
        500,
        1e-10,
    )?;
    println!(
        "{} steps, max |F - J| = {:.2e}, within tolerance: {}",
        report.steps, report.max_residual, report.within_tol
    );
    println!(
        "last deflection D = {}",
        sys.deflection_history().entry(0).transpose()
    );
    Ok(())
}
