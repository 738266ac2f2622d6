//! Scattering blocks of a two-port cell with one stub: impulse response,
//! stability margin and the condensed S-matrix at a few phases.
//!
//! cargo run --example scattering_blocks

use tlm_core::linalg::{Mat, NormKind, Vector};
use tlm_core::SBlocks;

fn main() -> tlm_core::Result<()> {
    let blocks = SBlocks::new(
        Mat::from_row_slice(2, 2, &[0.1, 0.6, 0.6, 0.1]),
        Mat::from_row_slice(2, 1, &[0.3, 0.3]),
        Mat::from_row_slice(1, 2, &[0.4, 0.4]),
        Mat::from_element(1, 1, 0.5),
        1.0,
    )?;

    let report = blocks.check_stability(NormKind::SpectralRadius);
    println!(
        "stub spectral radius {:.3}, margin {:.3}",
        report.norm, report.margin
    );

    let resp = blocks.impulse_response(&Vector::from_vec(vec![1.0, 0.0]), 8)?;
    println!("step  out0        out1");
    for (t, r) in resp.iter().enumerate() {
        println!("{t:>4}  {:+.6}  {:+.6}", r[0], r[1]);
    }

    for theta in [0.0, 0.5, 1.5, 3.0] {
        let s = blocks.freq_condense(theta)?;
        println!(
            "theta {theta:.1}: |S11| = {:.4}, |S21| = {:.4}",
            s[(0, 0)].norm(),
            s[(1, 0)].norm()
        );
    }
    Ok(())
}
