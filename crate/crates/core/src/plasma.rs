//! Relativistic particle current coupled to a Maxwell cell by deflection.
//!
//! A coupled cell has 12 wave ports: `0..6` are the field ports of
//! [`MaxwellCell`], `6..12` carry face currents in the face order of
//! [`HexGeometry::face_vectors`]. Face channels have zero impedance, so the
//! only link quantity is the current `J = J_in + J_out`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::deflection::{DeflectedSystem, ZeroPerturbation};
use crate::error::{Result, TlmError};
use crate::linalg::Vector;
use crate::maxwell::{HexGeometry, MaxwellCell};

pub type V3 = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticleParams {
    /// Rest mass, kg.
    pub m0: f64,
    /// Particle charge, C.
    pub q0: f64,
    /// Mean collision frequency, 1/s.
    pub nu_c: f64,
    /// Speed of light, m/s.
    pub c0: f64,
}

impl ParticleParams {
    pub fn new(m0: f64, q0: f64, nu_c: f64, c0: f64) -> Result<Self> {
        let p = Self { m0, q0, nu_c, c0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m0 > 0.0 && self.m0.is_finite()) {
            return Err(TlmError::InvalidParticles(format!(
                "m0 = {} must be > 0",
                self.m0
            )));
        }
        if !(self.c0 > 0.0 && self.c0.is_finite()) {
            return Err(TlmError::InvalidParticles(format!(
                "c0 = {} must be > 0",
                self.c0
            )));
        }
        if !(self.nu_c >= 0.0 && self.nu_c.is_finite()) {
            return Err(TlmError::InvalidParticles(format!(
                "nu_c = {} must be >= 0",
                self.nu_c
            )));
        }
        if !self.q0.is_finite() {
            return Err(TlmError::InvalidParticles("q0 is not finite".into()));
        }
        Ok(())
    }

    fn check_speed(&self, v: &V3) -> Result<f64> {
        let speed = v.norm();
        if !(speed < self.c0) {
            return Err(TlmError::SuperluminalVelocity { speed, c0: self.c0 });
        }
        Ok(speed)
    }
}

/// Particle state of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleState {
    /// Total charge in the cell, C.
    pub charge: f64,
    /// Mean velocity, m/s.
    pub v: V3,
    /// Face currents `J_out` of the last step, A.
    pub j_face: [f64; 6],
}

impl ParticleState {
    pub fn new(charge: f64, v: V3) -> Self {
        Self {
            charge,
            v,
            j_face: [0.0; 6],
        }
    }
}

/// `m = m0 / sqrt(1 - v^2/c0^2)`.
pub fn relativistic_mass(params: &ParticleParams, v: &V3) -> Result<f64> {
    let speed = params.check_speed(v)?;
    let beta = speed / params.c0;
    Ok(params.m0 / (1.0 - beta * beta).sqrt())
}

/// `m (I + lambda v v^T)` with `lambda = 1 / (c0^2 - v^2)`.
pub fn mass_matrix(params: &ParticleParams, v: &V3) -> Result<Matrix3<f64>> {
    let m = relativistic_mass(params, v)?;
    let lambda = 1.0 / (params.c0 * params.c0 - v.norm_squared());
    Ok((Matrix3::identity() + v * v.transpose() * lambda) * m)
}

/// `M^-1 F_L` with `F_L = q0 (E + v x B) - nu_c m v`.
pub fn lorentz_accel(params: &ParticleParams, v: &V3, e: &V3, b: &V3) -> Result<V3> {
    let m = relativistic_mass(params, v)?;
    let force = (e + v.cross(b)) * params.q0 - v * (params.nu_c * m);
    let mm = mass_matrix(params, v)?;
    let chol = mm.cholesky().ok_or_else(|| {
        TlmError::InvalidParticles("mass matrix lost positive definiteness".into())
    })?;
    Ok(chol.solve(&force))
}

/// Explicit Euler step `v + tau M^-1 F_L`.
pub fn step_velocity(params: &ParticleParams, v: &V3, e: &V3, b: &V3, tau: f64) -> Result<V3> {
    let next = v + lorentz_accel(params, v, e, b)? * tau;
    let speed = next.norm();
    if !(speed < params.c0) {
        return Err(TlmError::SuperluminalStep {
            speed,
            c0: params.c0,
        });
    }
    Ok(next)
}

/// Rejects velocity increments above `0.1 (c0 - |v|)`.
pub fn check_velocity_gate(params: &ParticleParams, v: &V3, v_next: &V3) -> Result<()> {
    let dv = (v_next - v).norm();
    let limit = 0.1 * (params.c0 - v.norm());
    if dv >= limit && dv > 0.0 {
        return Err(TlmError::VelocityStepTooLarge { dv, limit });
    }
    Ok(())
}

/// `J_c = 1/4 B^-1 Q v`.
pub fn convection_current(geometry: &HexGeometry, charge: f64, v: &V3) -> V3 {
    let bi = geometry.b_inv();
    let m = Matrix3::from_fn(|r, c| bi[(r, c)]);
    m * v * (0.25 * charge)
}

/// `J_mu = rho v . f^mu` for the six inward face vectors.
pub fn face_currents(geometry: &HexGeometry, rho: f64, v: &V3) -> [f64; 6] {
    let faces = geometry.face_vectors();
    let mut out = [0.0; 6];
    for (o, f) in out.iter_mut().zip(faces.iter()) {
        *o = rho * (v[0] * f[0] + v[1] * f[1] + v[2] * f[2]);
    }
    out
}

/// `Q + tau sum J`.
pub fn update_charge(charge: f64, tau: f64, currents: &[f64]) -> f64 {
    charge + tau * currents.iter().sum::<f64>()
}

/// Maxwell cell deflected by the convection current of a particle population.
#[derive(Debug)]
pub struct CoupledCell {
    cell: MaxwellCell,
    system: DeflectedSystem,
    params: ParticleParams,
    state: ParticleState,
    initial: ParticleState,
    j_c: V3,
    mu: Matrix3<f64>,
}

impl CoupledCell {
    pub const PORTS: usize = 12;

    pub fn new(cell: MaxwellCell, params: ParticleParams, state: ParticleState) -> Result<Self> {
        params.validate()?;
        params.check_speed(&state.v)?;
        if params.q0 == 0.0 && state.charge != 0.0 {
            return Err(TlmError::InvalidParticles(
                "cell charge must be zero when q0 = 0".into(),
            ));
        }
        let system = DeflectedSystem::new(
            cell.smatrix(),
            cell.split(),
            cell.model(),
            Box::new(ZeroPerturbation { image_dim: 12 }),
        )?;
        let mu = Matrix3::from_fn(|r, c| cell.materials.mu[(r, c)]);
        Ok(Self {
            j_c: convection_current(&cell.geometry, state.charge, &state.v),
            cell,
            system,
            params,
            initial: state.clone(),
            state,
            mu,
        })
    }

    pub fn cell(&self) -> &MaxwellCell {
        &self.cell
    }

    pub fn state(&self) -> &ParticleState {
        &self.state
    }

    pub fn params(&self) -> &ParticleParams {
        &self.params
    }

    pub fn system(&self) -> &DeflectedSystem {
        &self.system
    }

    pub fn convection(&self) -> &V3 {
        &self.j_c
    }

    /// `|F_t - J_t|` of the field equations after the last step.
    pub fn residual(&self) -> f64 {
        self.system.last_residual()
    }

    /// Latest node state `z^n(t + tau/2)` in canonical coordinates.
    pub fn node(&self) -> &Vector {
        self.system.node_history().entry(0)
    }

    /// Electric and magnetic field of the latest node state.
    pub fn fields(&self) -> Result<(V3, V3)> {
        let (e, h) = self.cell.interpret_fields(self.node())?;
        Ok((V3::new(e[0], e[1], e[2]), V3::new(h[0], h[1], h[2])))
    }

    pub fn reset(&mut self) {
        self.system.reset();
        self.state = self.initial.clone();
        self.j_c = convection_current(&self.cell.geometry, self.state.charge, &self.state.v);
    }

    /// One coupled update, in order:
    /// field scatter with the pending deflection, `q = Q + tau sum J_in`,
    /// velocity from the fresh node fields, `J_c = 1/4 B^-1 q v`,
    /// `J_out = -J_in + q v . f / det(B)`, `Q = q + tau sum J_out`.
    pub fn step(&mut self, z_in: &Vector) -> Result<Vector> {
        if z_in.len() != Self::PORTS {
            return Err(TlmError::DimensionMismatch {
                context: "coupled cell incident vector",
                expected: Self::PORTS,
                found: z_in.len(),
            });
        }
        let tau = self.cell.tau;
        let field_in = z_in.rows(0, 6).into_owned();
        let j_in: Vec<f64> = z_in.rows(6, 6).iter().copied().collect();

        let mut forcing = Vector::zeros(12);
        forcing[0] = -self.j_c[0];
        forcing[1] = -self.j_c[1];
        forcing[2] = -self.j_c[2];
        let field_out = self.system.step_with_forcing(&field_in, forcing)?;

        let q = update_charge(self.state.charge, tau, &j_in);
        let (e, h) = self.fields()?;
        let b = self.mu * h;
        let v_next = step_velocity(&self.params, &self.state.v, &e, &b, tau)?;
        check_velocity_gate(&self.params, &self.state.v, &v_next)?;
        self.j_c = convection_current(&self.cell.geometry, q, &v_next);

        let rho = q / self.cell.geometry.det();
        let drift = face_currents(&self.cell.geometry, rho, &v_next);
        let mut j_out = [0.0; 6];
        for k in 0..6 {
            j_out[k] = -j_in[k] + drift[k];
        }
        self.state.charge = update_charge(q, tau, &j_out);
        self.state.v = v_next;
        self.state.j_face = j_out;

        let mut out = Vector::zeros(Self::PORTS);
        out.rows_mut(0, 6).copy_from(&field_out);
        for k in 0..6 {
            out[6 + k] = j_out[k];
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maxwell::Materials;

    fn params() -> ParticleParams {
        ParticleParams::new(1.0, 1.0, 0.0, 1.0).unwrap()
    }

    #[test]
    fn mass_at_rest_and_at_six_tenths() {
        let p = params();
        assert_eq!(relativistic_mass(&p, &V3::zeros()).unwrap(), 1.0);
        let m = relativistic_mass(&p, &V3::new(0.6, 0.0, 0.0)).unwrap();
        assert!((m - 1.25).abs() < 1e-15);
        assert!(matches!(
            relativistic_mass(&p, &V3::new(0.0, 1.0, 0.0)),
            Err(TlmError::SuperluminalVelocity { .. })
        ));
    }

    #[test]
    fn mass_matrix_spectrum() {
        let p = params();
        assert_eq!(mass_matrix(&p, &V3::zeros()).unwrap(), Matrix3::identity());
        let v = V3::new(0.3, -0.4, 0.5);
        let mm = mass_matrix(&p, &v).unwrap();
        let m = relativistic_mass(&p, &v).unwrap();
        let gamma2 = 1.0 / (1.0 - v.norm_squared());
        let mut eig: Vec<f64> = mm.symmetric_eigen().eigenvalues.iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        assert!((eig[0] - m).abs() < 1e-12);
        assert!((eig[1] - m).abs() < 1e-12);
        assert!((eig[2] - m * gamma2).abs() < 1e-12);
        let mv = mm * v;
        assert!((mv - v * (m * gamma2)).norm() < 1e-12);
    }

    #[test]
    fn acceleration_limits() {
        let p = params();
        let z = V3::zeros();
        assert_eq!(
            lorentz_accel(&p, &V3::new(0.1, 0.0, 0.0), &z, &z).unwrap(),
            z
        );
        let v = V3::new(0.0, 0.0, 0.3);
        let b = V3::new(0.0, 0.0, 2.0);
        assert!(lorentz_accel(&p, &v, &z, &b).unwrap().norm() < 1e-15);
        let p2 = ParticleParams::new(2.0, 3.0, 0.0, 1.0).unwrap();
        let e = V3::new(1.0, 0.5, 0.0);
        let a = lorentz_accel(&p2, &z, &e, &V3::new(0.0, 0.0, 1.0)).unwrap();
        assert!((a - e * 1.5).norm() < 1e-15);
    }

    #[test]
    fn velocity_steps() {
        let p = ParticleParams::new(2.0, 0.5, 0.0, 10.0).unwrap();
        let z = V3::zeros();
        let v = V3::new(0.1, 0.2, 0.0);
        assert_eq!(step_velocity(&p, &v, &z, &z, 0.1).unwrap(), v);
        let e = V3::new(0.0, 0.0, 4.0);
        let next = step_velocity(&p, &z, &e, &z, 0.01).unwrap();
        assert!((next - e * (0.01 * 0.5 / 2.0)).norm() < 1e-15);
        let big = V3::new(1e3, 0.0, 0.0);
        assert!(matches!(
            step_velocity(&p, &z, &big, &z, 1.0),
            Err(TlmError::SuperluminalStep { .. })
        ));
        assert!(check_velocity_gate(&p, &z, &V3::new(0.5, 0.0, 0.0)).is_ok());
        assert!(matches!(
            check_velocity_gate(&p, &z, &V3::new(1.5, 0.0, 0.0)),
            Err(TlmError::VelocityStepTooLarge { .. })
        ));
    }

    #[test]
    fn drag_decays_like_the_scalar_ode() {
        let nu = 2.0;
        let p = ParticleParams::new(1.0, 1.0, nu, 3e8).unwrap();
        let tau = 1e-3;
        let mut v = V3::new(1.0, 0.0, 0.0);
        let z = V3::zeros();
        for _ in 0..500 {
            v = step_velocity(&p, &v, &z, &z, tau).unwrap();
        }
        let t = 500.0 * tau;
        assert!((v[0] - (1.0 - nu * tau).powi(500)).abs() < 1e-12);
        assert!((v[0] - (-nu * t).exp()).abs() < 2e-3);
    }

    #[test]
    fn convection_and_face_currents() {
        let g = HexGeometry::unit_cube();
        assert_eq!(
            convection_current(&g, 0.0, &V3::new(1.0, 2.0, 3.0)),
            V3::zeros()
        );
        let jc = convection_current(&g, 4.0, &V3::new(1.0, 0.0, 0.0));
        assert!((jc - V3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
        let jc2 = convection_current(&g, 8.0, &V3::new(1.0, 0.0, 0.0));
        assert_eq!(jc2, jc * 2.0);

        assert_eq!(face_currents(&g, 1.0, &V3::zeros()), [0.0; 6]);
        let f = face_currents(&g, 1.0, &V3::new(1.0, 0.0, 0.0));
        assert_eq!(f[0], 1.0);
        assert_eq!(f[1], -1.0);
        assert_eq!(&f[2..], &[0.0; 4]);
    }

    #[test]
    fn charge_updates() {
        assert_eq!(update_charge(2.0, 0.5, &[0.0; 6]), 2.0);
        assert_eq!(
            update_charge(0.0, 0.5, &[1.0, 2.0, 0.0, 0.0, 0.0, 1.0]),
            2.0
        );
    }

    fn cube_cell() -> MaxwellCell {
        MaxwellCell::new(
            HexGeometry::unit_cube(),
            Materials::vacuum_normalized(),
            1.0,
            0.2,
            0.2,
        )
        .unwrap()
    }

    #[test]
    fn uncharged_cell_is_the_free_field() {
        let cell = cube_cell();
        let free = cell.smatrix();
        // heavy test particles keep the velocity gate quiet; with no charge they exert nothing
        let p = ParticleParams::new(100.0, 1.0, 0.0, 1.0).unwrap();
        let mut cc = CoupledCell::new(cell, p, ParticleState::new(0.0, V3::zeros())).unwrap();
        let mut stub = free.zero_stub();
        for t in 0..30 {
            let mut z = Vector::zeros(12);
            if t == 0 {
                z[0] = 1.0;
                z[4] = -0.5;
            }
            let out = cc.step(&z).unwrap();
            let (expect, next) = free
                .scatter_step(&z.rows(0, 6).into_owned(), &stub)
                .unwrap();
            stub = next;
            assert_eq!(out.rows(0, 6).into_owned(), expect);
        }
    }

    #[test]
    fn charged_cell_satisfies_field_equations() {
        let p = ParticleParams::new(1.0, 0.05, 0.1, 10.0).unwrap();
        let mut cc = CoupledCell::new(
            cube_cell(),
            p,
            ParticleState::new(1e-3, V3::new(0.1, 0.0, 0.0)),
        )
        .unwrap();
        for t in 0..100 {
            let mut z = Vector::zeros(12);
            if t == 0 {
                z[0] = 1.0;
                z[3] = 0.5;
            }
            cc.step(&z).unwrap();
            assert!(cc.residual() < 1e-8, "step {t}: {}", cc.residual());
        }
    }

    #[test]
    fn zero_charge_requires_zero_q0_consistency() {
        let p = ParticleParams::new(1.0, 0.0, 0.0, 1.0).unwrap();
        assert!(CoupledCell::new(cube_cell(), p, ParticleState::new(1.0, V3::zeros())).is_err());
    }
}
