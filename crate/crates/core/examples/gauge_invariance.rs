//! Changing the stub basis (L G^-1, G M, G N G^-1) leaves every observable alone.
//!
//! cargo run --example gauge_invariance

use tlm_core::linalg::{Mat, Vector};
use tlm_core::SBlocks;

fn main() -> tlm_core::Result<()> {
    let blocks = SBlocks::new(
        Mat::from_row_slice(2, 2, &[0.2, -0.1, 0.3, 0.05]),
        Mat::from_row_slice(2, 2, &[1.0, 0.2, -0.4, 0.5]),
        Mat::from_row_slice(2, 2, &[0.3, 0.1, 0.0, -0.6]),
        Mat::from_row_slice(2, 2, &[0.5, 0.2, -0.1, 0.3]),
        1.0,
    )?;
    let g = Mat::from_row_slice(2, 2, &[2.0, 1.0, -0.5, 1.5]);
    let moved = blocks.gauge_transform(&g)?;

    let z = Vector::from_vec(vec![1.0, -1.0]);
    let a = blocks.impulse_response(&z, 40)?;
    let b = moved.impulse_response(&z, 40)?;
    let gap = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x - y).amax())
        .fold(0.0, f64::max);
    println!("impulse responses differ by at most {gap:.2e}");

    for theta in [0.3, 1.2, 2.7] {
        let d = blocks.freq_condense(theta)? - moved.freq_condense(theta)?;
        let gap = d.iter().map(|c| c.norm()).fold(0.0, f64::max);
        println!("theta {theta}: condensed matrices differ by {gap:.2e}");
    }
    println!("N before:\n{}N after:\n{}", blocks.n, moved.n);
    Ok(())
}
