#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tlm_core::linalg::{largest_singular_value, spectral_radius, CMat, Mat, Vector, C64};
use tlm_core::maxwell::admittance_bound;
use tlm_core::{HexGeometry, Materials, MaxwellCell, SBlocks};

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

pub fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

pub fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

/// Blocks cut from a random square operator scaled to `sup_norm`, so both
/// the stub operator and the condensed matrix are contractive.
pub fn passive_blocks(
    rng: &mut ChaCha8Rng,
    ports: usize,
    stubs: usize,
    sup_norm: f64,
    tau: f64,
) -> SBlocks {
    let d = ports + stubs;
    let mut s = rand_mat(rng, d, d);
    s *= sup_norm / largest_singular_value(&s);
    SBlocks::new(
        s.view((0, 0), (ports, ports)).into_owned(),
        s.view((0, ports), (ports, stubs)).into_owned(),
        s.view((ports, 0), (stubs, ports)).into_owned(),
        s.view((ports, ports), (stubs, stubs)).into_owned(),
        tau,
    )
    .unwrap()
}

/// Blocks with an arbitrary (non-contractive) `K`, `L`, `M` and `rho(N) = radius`.
pub fn stable_blocks(rng: &mut ChaCha8Rng, ports: usize, stubs: usize, radius: f64) -> SBlocks {
    let mut n = rand_mat(rng, stubs, stubs);
    let rho = spectral_radius(&n).unwrap();
    if rho > 0.0 {
        n *= radius / rho;
    }
    SBlocks::new(
        rand_mat(rng, ports, ports),
        rand_mat(rng, ports, stubs),
        rand_mat(rng, stubs, ports),
        n,
        uniform(rng, 0.1, 2.0),
    )
    .unwrap()
}

pub fn well_conditioned(rng: &mut ChaCha8Rng, n: usize, spread: f64) -> Mat {
    loop {
        let g = Mat::identity(n, n) + rand_mat(rng, n, n) * spread;
        let sv = g.clone().svd(false, false).singular_values;
        let (lo, hi) = sv
            .iter()
            .fold((f64::INFINITY, 0.0_f64), |(a, b), &s| (a.min(s), b.max(s)));
        if lo > 0.2 && hi / lo < 20.0 {
            return g;
        }
    }
}

pub fn spd(rng: &mut ChaCha8Rng, floor: f64) -> Mat {
    let a = rand_mat(rng, 3, 3);
    &a * a.transpose() + Mat::identity(3, 3) * floor
}

/// Positive semidefinite of random rank (possibly zero).
pub fn psd(rng: &mut ChaCha8Rng) -> Mat {
    let rank = rng.random_range(0..=3);
    let c = rand_mat(rng, 3, rank);
    &c * c.transpose()
}

pub fn geometry(rng: &mut ChaCha8Rng) -> HexGeometry {
    loop {
        let b = well_conditioned(rng, 3, 0.25) * uniform(rng, 0.5, 2.0);
        if let Ok(g) = HexGeometry::new(b) {
            return g;
        }
    }
}

/// Random admissible cell; `lossy` controls whether `kappa_e` is positive definite or zero.
pub fn maxwell_cell(rng: &mut ChaCha8Rng, lossy: Option<bool>) -> MaxwellCell {
    let g = geometry(rng);
    let kappa_e = match lossy {
        Some(true) => spd(rng, 0.2),
        Some(false) => Mat::zeros(3, 3),
        None => psd(rng),
    };
    let kappa_m = match lossy {
        Some(_) => Mat::zeros(3, 3),
        None => psd(rng),
    };
    let mat = Materials::new(spd(rng, 0.5), spd(rng, 0.5), kappa_e, kappa_m).unwrap();
    let tau = uniform(rng, 0.5, 2.0);
    let y = uniform(rng, 0.2, 0.9) * admittance_bound(&g, &mat.eps, tau).unwrap();
    let yd = uniform(rng, 0.2, 0.9) * admittance_bound(&g, &mat.mu, tau).unwrap();
    MaxwellCell::new(g, mat, tau, y, yd).unwrap()
}

pub fn cmax(m: &CMat) -> f64 {
    m.iter().fold(0.0, |a, c: &C64| a.max(c.norm()))
}

pub fn mat_max(m: &Mat) -> f64 {
    m.amax()
}
