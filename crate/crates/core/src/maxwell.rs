//! Hexahedral Maxwell cell: geometry, material tensors and the scattering
//! blocks of the discretized Ampère and Faraday laws.
//!
//! Each law lives on a 6-dim link space `z = (u, i)` with wave coordinates
//! `u = a + b`, `i = y (a - b)` (`a` incident, `b` outgoing). The discretized
//! Ampère law reads
//!
//! ```text
//! T+ u^n(t + tau/2) + T- u^n(t - tau/2) - i^p(t) = 0
//! ```
//!
//! Faraday's law has the same form in the dual coordinates `(i_F, u_F)`
//! with `(mu, kappa_m, y_dual)`.
//!
//! Combined cell ordering (12 link coordinates, 6 wave ports, 6 stubs):
//! `[u_A(3), i_A(3), i_F(3), u_F(3)]`, ports `0..3` Ampère, `3..6` Faraday.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::deflection::ModelForm;
use crate::error::{Result, TlmError};
use crate::linalg::{direct_sum, matrix_sqrt_psd, spectral_radius, Mat, Vector};
use crate::scattering::{LinkSplit, SBlocks};

/// Cell geometry given by the node vector matrix `B` (node vectors as columns).
#[derive(Debug, Clone, PartialEq)]
pub struct HexGeometry {
    b: Mat,
    b_inv: Mat,
    det: f64,
}

impl HexGeometry {
    pub fn new(b: Mat) -> Result<Self> {
        if b.shape() != (3, 3) {
            return Err(TlmError::DimensionMismatch {
                context: "node vector matrix",
                expected: 3,
                found: if b.nrows() != 3 { b.nrows() } else { b.ncols() },
            });
        }
        let det = b.determinant();
        if !(det > 0.0 && det.is_finite()) {
            return Err(TlmError::SingularGeometry { det });
        }
        let b_inv = b
            .clone()
            .try_inverse()
            .ok_or(TlmError::SingularGeometry { det })?;
        Ok(Self { b, b_inv, det })
    }

    /// `B` from its rows, the layout used in configuration files.
    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self> {
        Self::new(Mat::from_fn(3, 3, |r, c| rows[r][c]))
    }

    /// Rectangular brick with edge lengths `dx, dy, dz`.
    pub fn brick(dx: f64, dy: f64, dz: f64) -> Result<Self> {
        Self::new(Mat::from_diagonal(&Vector::from_vec(vec![dx, dy, dz])))
    }

    pub fn unit_cube() -> Self {
        Self::brick(1.0, 1.0, 1.0).expect("unit cube is regular")
    }

    pub fn b(&self) -> &Mat {
        &self.b
    }

    pub fn b_inv(&self) -> &Mat {
        &self.b_inv
    }

    /// Cell volume.
    pub fn det(&self) -> f64 {
        self.det
    }

    /// `A = det(B) B^-T`; column `k` is the cross product of the other two node vectors.
    pub fn area_matrix(&self) -> Mat {
        self.b_inv.transpose() * self.det
    }

    /// Port vector `p^k`, the `k`-th node vector.
    pub fn port_vector(&self, k: usize) -> Vector {
        self.b.column(k).into_owned()
    }

    /// Inward face vectors in the order `(-x, +x, -y, +y, -z, +z)`.
    pub fn face_vectors(&self) -> [Vector; 6] {
        let a = self.area_matrix();
        let col = |k: usize, s: f64| a.column(k).into_owned() * s;
        [
            col(0, 1.0),
            col(0, -1.0),
            col(1, 1.0),
            col(1, -1.0),
            col(2, 1.0),
            col(2, -1.0),
        ]
    }
}

/// Material tensors of a cell (SI units).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Materials {
    pub eps: Mat,
    pub mu: Mat,
    pub kappa_e: Mat,
    pub kappa_m: Mat,
}

fn check_tensor(name: &'static str, m: &Mat, strict: bool) -> Result<()> {
    if m.shape() != (3, 3) {
        return Err(TlmError::InvalidMaterial {
            name,
            reason: format!("expected 3x3, got {}x{}", m.nrows(), m.ncols()),
        });
    }
    if !m.iter().all(|x| x.is_finite()) {
        return Err(TlmError::InvalidMaterial {
            name,
            reason: "non-finite entry".into(),
        });
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return Err(TlmError::InvalidMaterial {
            name,
            reason: "tensor is not symmetric".into(),
        });
    }
    let min = SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let ok = if strict {
        min > 0.0
    } else {
        min >= -1e-12 * scale
    };
    if !ok {
        return Err(TlmError::InvalidMaterial {
            name,
            reason: format!(
                "smallest eigenvalue {min:.3e}, tensor must be positive {}",
                if strict { "definite" } else { "semidefinite" }
            ),
        });
    }
    Ok(())
}

impl Materials {
    pub fn new(eps: Mat, mu: Mat, kappa_e: Mat, kappa_m: Mat) -> Result<Self> {
        check_tensor("eps", &eps, true)?;
        check_tensor("mu", &mu, true)?;
        check_tensor("kappa_e", &kappa_e, false)?;
        check_tensor("kappa_m", &kappa_m, false)?;
        Ok(Self {
            eps,
            mu,
            kappa_e,
            kappa_m,
        })
    }

    /// Isotropic scalars.
    pub fn isotropic(eps: f64, mu: f64, kappa_e: f64, kappa_m: f64) -> Result<Self> {
        let s = |x: f64| Mat::identity(3, 3) * x;
        Self::new(s(eps), s(mu), s(kappa_e), s(kappa_m))
    }

    pub fn vacuum_normalized() -> Self {
        Self::isotropic(1.0, 1.0, 0.0, 0.0).expect("unit tensors are valid")
    }
}

/// `T+-` = `1/4 det(B) B^-1 (kappa/2 +- eps/tau) B^-T`.
pub fn assemble_t(geometry: &HexGeometry, eps: &Mat, kappa: &Mat, tau: f64) -> Result<(Mat, Mat)> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(TlmError::InvalidTimeStep(tau));
    }
    let bi = geometry.b_inv();
    let c = 0.25 * geometry.det();
    let sym = |m: Mat| (&m + m.transpose()) * 0.5;
    let plus = sym(bi * (kappa * 0.5 + eps / tau) * bi.transpose() * c);
    let minus = sym(bi * (kappa * 0.5 - eps / tau) * bi.transpose() * c);
    Ok((plus, minus))
}

/// Incoming/outgoing split of the `(u, i)` link space for admittance `y`.
///
/// `pi_in = 1/2 [[1, z], [y, 1]]`, `pi_out = 1/2 [[1, -z], [-y, 1]]` with `z = 1/y`.
pub fn assemble_projections(y: f64) -> Result<LinkSplit> {
    if !(y > 0.0 && y.is_finite()) {
        return Err(TlmError::InvalidAdmittance(y));
    }
    let z = 1.0 / y;
    let i3 = Mat::identity(3, 3);
    let stack = |top: f64, bottom: f64| {
        let mut m = Mat::zeros(6, 3);
        m.view_mut((0, 0), (3, 3)).copy_from(&(&i3 * top));
        m.view_mut((3, 0), (3, 3)).copy_from(&(&i3 * bottom));
        m
    };
    let row = |left: f64, right: f64| {
        let mut m = Mat::zeros(3, 6);
        m.view_mut((0, 0), (3, 3)).copy_from(&(&i3 * left));
        m.view_mut((0, 3), (3, 3)).copy_from(&(&i3 * right));
        m
    };
    Ok(LinkSplit {
        embed_in: stack(1.0, y),
        extract_in: row(0.5, 0.5 * z),
        embed_out: stack(1.0, -y),
        extract_out: row(0.5, -0.5 * z),
    })
}

/// Model coefficients of one law in the form `F = phi_0 z^n + phi_1 z^n_(-1) + psi_0 z^p`.
pub fn law_model(t_plus: &Mat, t_minus: &Mat) -> ModelForm {
    let top_left = |m: &Mat| {
        let mut out = Mat::zeros(6, 6);
        out.view_mut((0, 0), (3, 3)).copy_from(m);
        out
    };
    let mut psi0 = Mat::zeros(6, 6);
    psi0.view_mut((0, 3), (3, 3))
        .copy_from(&(-Mat::identity(3, 3)));
    ModelForm::new(6, 6)
        .with_phi(0, top_left(t_plus))
        .and_then(|m| m.with_phi(1, top_left(t_minus)))
        .and_then(|m| m.with_psi(0, psi0))
        .expect("law coefficients are 6x6")
}

/// Scattering data of one law.
#[derive(Debug, Clone, PartialEq)]
pub struct LawBlocks {
    /// Blocks in wave coordinates: 3 incident, 3 outgoing, 3 stubs.
    pub wave: SBlocks,
    pub split: LinkSplit,
    pub model: ModelForm,
    pub t_plus: Mat,
    pub t_minus: Mat,
    pub y: f64,
}

impl LawBlocks {
    /// Same blocks acting on the full `(u, i)` link space:
    /// `K6 = E_out K P_in`, `L6 = E_out L`, `M6 = M P_in`.
    pub fn canonical(&self) -> SBlocks {
        let s = &self.split;
        SBlocks {
            k: &s.embed_out * &self.wave.k * &s.extract_in,
            l: &s.embed_out * &self.wave.l,
            m: &self.wave.m * &s.extract_in,
            n: self.wave.n.clone(),
            tau: self.wave.tau,
        }
    }

    pub fn stub_radius(&self) -> f64 {
        spectral_radius(&self.wave.n).expect("N is square")
    }
}

/// Stub operator `N = -X^(1/2) (y + T-) X^(1/2)` with `X = T+^-1`.
fn stub_operator(t_minus: &Mat, x_half: &Mat, y: f64) -> Mat {
    let inner = Mat::identity(3, 3) * y + t_minus;
    let n = -(x_half * inner * x_half);
    (&n + n.transpose()) * 0.5
}

/// Blocks of a law `T+ u^n + T- u^n_(-1) = i^p` in the symmetric stub gauge.
///
/// `K = y X - 1`, `N = -X^(1/2) (y + T-) X^(1/2)`, `L = X^(1/2) (y (1 + N))^(1/2)`,
/// `M = L^T`, so the full scattering operator is symmetric.
pub fn assemble_law(t_plus: &Mat, t_minus: &Mat, y: f64, tau: f64) -> Result<LawBlocks> {
    let split = assemble_projections(y)?;
    let eig = SymmetricEigen::new(t_plus.clone());
    let min = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if !(min > 1e-14 * t_plus.amax()) {
        return Err(TlmError::SingularTPlus);
    }
    let q = &eig.eigenvectors;
    let x = q * Mat::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l)) * q.transpose();
    let x_half = q * Mat::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt())) * q.transpose();

    let k = &x * y - Mat::identity(3, 3);
    let n = stub_operator(t_minus, &x_half, y);
    let root = matrix_sqrt_psd(&((Mat::identity(3, 3) + &n) * y)).map_err(|_| {
        TlmError::StubSqrtDomain {
            spectral_radius: spectral_radius(&n).unwrap_or(f64::NAN),
        }
    })?;
    let l = &x_half * root;
    let m = l.transpose();
    Ok(LawBlocks {
        wave: SBlocks::new(k, l, m, n, tau)?,
        split,
        model: law_model(t_plus, t_minus),
        t_plus: t_plus.clone(),
        t_minus: t_minus.clone(),
        y,
    })
}

pub fn assemble_ampere(
    geometry: &HexGeometry,
    materials: &Materials,
    tau: f64,
    y: f64,
) -> Result<LawBlocks> {
    let (tp, tm) = assemble_t(geometry, &materials.eps, &materials.kappa_e, tau)?;
    assemble_law(&tp, &tm, y, tau)
}

pub fn assemble_faraday(
    geometry: &HexGeometry,
    materials: &Materials,
    tau: f64,
    y_dual: f64,
) -> Result<LawBlocks> {
    let (tp, tm) = assemble_t(geometry, &materials.mu, &materials.kappa_m, tau)?;
    assemble_law(&tp, &tm, y_dual, tau)
}

/// Largest admittance for which the law's stub operator is contractive.
///
/// With `Q = 1/4 det(B) B^-1 (eps/tau) B^-T`, the bound is `2 lambda_min(Q)`.
pub fn admittance_bound(geometry: &HexGeometry, eps: &Mat, tau: f64) -> Result<f64> {
    let (tp, tm) = assemble_t(geometry, eps, &Mat::zeros(3, 3), tau)?;
    let q = (tp - tm) * 0.5;
    let min = SymmetricEigen::new(q)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    Ok(2.0 * min)
}

/// A fully assembled cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxwellCell {
    pub geometry: HexGeometry,
    pub materials: Materials,
    pub tau: f64,
    pub y: f64,
    pub y_dual: f64,
    pub ampere: LawBlocks,
    pub faraday: LawBlocks,
}

impl MaxwellCell {
    pub fn new(
        geometry: HexGeometry,
        materials: Materials,
        tau: f64,
        y: f64,
        y_dual: f64,
    ) -> Result<Self> {
        let ampere = assemble_ampere(&geometry, &materials, tau, y)?;
        let faraday = assemble_faraday(&geometry, &materials, tau, y_dual)?;
        Ok(Self {
            geometry,
            materials,
            tau,
            y,
            y_dual,
            ampere,
            faraday,
        })
    }

    /// Direct sum of both laws in wave coordinates (6 ports, 6 stubs).
    pub fn smatrix(&self) -> SBlocks {
        self.ampere
            .wave
            .direct_sum(&self.faraday.wave)
            .expect("both laws share tau")
    }

    /// Link split of the 12-dim canonical space.
    pub fn split(&self) -> LinkSplit {
        let (a, f) = (&self.ampere.split, &self.faraday.split);
        LinkSplit {
            embed_in: direct_sum(&a.embed_in, &f.embed_in),
            extract_in: direct_sum(&a.extract_in, &f.extract_in),
            embed_out: direct_sum(&a.embed_out, &f.embed_out),
            extract_out: direct_sum(&a.extract_out, &f.extract_out),
        }
    }

    /// Model of both laws on the 12-dim canonical space.
    pub fn model(&self) -> ModelForm {
        combine_models(&self.ampere.model, &self.faraday.model)
    }

    /// Worst stub spectral radius of the two laws.
    pub fn stub_radius(&self) -> f64 {
        self.ampere.stub_radius().max(self.faraday.stub_radius())
    }

    /// `E = B^-T u_A`, `H = B^-T i_F` from a 12-dim canonical node vector.
    pub fn interpret_fields(&self, z_node: &Vector) -> Result<(Vector, Vector)> {
        interpret_fields(&self.geometry, z_node)
    }
}

/// Block-diagonal combination of two model forms.
pub fn combine_models(a: &ModelForm, b: &ModelForm) -> ModelForm {
    let mut out = ModelForm::new(a.image_dim() + b.image_dim(), a.link_dim() + b.link_dim());
    let lags: std::collections::BTreeSet<usize> =
        a.phi.keys().chain(b.phi.keys()).copied().collect();
    for mu in lags {
        out.phi.insert(mu, direct_sum(&a.phi(mu), &b.phi(mu)));
    }
    let lags: std::collections::BTreeSet<usize> =
        a.psi.keys().chain(b.psi.keys()).copied().collect();
    for mu in lags {
        out.psi.insert(mu, direct_sum(&a.psi(mu), &b.psi(mu)));
    }
    out
}

pub fn interpret_fields(geometry: &HexGeometry, z_node: &Vector) -> Result<(Vector, Vector)> {
    if z_node.len() != 12 {
        return Err(TlmError::DimensionMismatch {
            context: "canonical node vector",
            expected: 12,
            found: z_node.len(),
        });
    }
    let bt_inv = geometry.b_inv().transpose();
    let e = &bt_inv * z_node.rows(0, 3);
    let h = &bt_inv * z_node.rows(6, 3);
    Ok((e, h))
}

/// Node vector with `u_A = B^T E`, `i_F = B^T H` and the remaining components zero.
pub fn fields_to_node(geometry: &HexGeometry, e: &Vector, h: &Vector) -> Vector {
    let bt = geometry.b().transpose();
    let mut z = Vector::zeros(12);
    z.rows_mut(0, 3).copy_from(&(&bt * e));
    z.rows_mut(6, 3).copy_from(&(&bt * h));
    z
}
