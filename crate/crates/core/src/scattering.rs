//! State-space splitting and the K/L/M/N scattering representation.
//!
//! A cell's state space splits into incoming link, outgoing link and stub
//! coordinates. The nodal scattering operator decomposes into four blocks
//!
//! ```text
//! K = pi_out S pi_in    L = pi_out S pi_s
//! M = pi_s   S pi_in    N = pi_s   S pi_s
//! ```
//!
//! and the outgoing response to an incident sequence is the convolution
//! `z_out(t) = K z_in(t) + L sum_mu N^mu M z_in(t - (mu+1) tau)`. [`SBlocks`]
//! evaluates it in rolling form with one stub vector per cell.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TlmError};
use crate::linalg::{
    min_singular_value, operator_norm, CMat, CVector, Mat, NormKind, Vector, C64, STRUCTURAL_TOL,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarField {
    Real,
    Complex,
}

/// Splitting dimensions of a cell state space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSpace {
    pub n_in: usize,
    pub n_out: usize,
    pub n_stub: usize,
    pub field: ScalarField,
}

impl StateSpace {
    pub fn real(n_in: usize, n_out: usize, n_stub: usize) -> Self {
        Self {
            n_in,
            n_out,
            n_stub,
            field: ScalarField::Real,
        }
    }

    pub fn dim(&self) -> usize {
        self.n_in + self.n_out + self.n_stub
    }

    pub fn link_dim(&self) -> usize {
        self.n_in + self.n_out
    }
}

/// The commuting projections `pi_in`, `pi_out`, `pi_s` on a cell state space.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionFamily {
    pi_in: Mat,
    pi_out: Mat,
    pi_s: Mat,
}

impl ProjectionFamily {
    /// Validates three dense operators as a complementary projection family.
    pub fn from_matrices(pi_in: Mat, pi_out: Mat, pi_s: Mat) -> Result<Self> {
        let n = pi_in.nrows();
        for (m, name) in [(&pi_in, "pi_in"), (&pi_out, "pi_out"), (&pi_s, "pi_s")] {
            if m.nrows() != n || m.ncols() != n {
                return Err(TlmError::DimensionMismatch {
                    context: name,
                    expected: n,
                    found: if m.nrows() != n { m.nrows() } else { m.ncols() },
                });
            }
        }
        let scale = [&pi_in, &pi_out, &pi_s]
            .iter()
            .map(|m| m.amax())
            .fold(1.0, f64::max);
        let tol = STRUCTURAL_TOL * scale * scale;

        for (m, name) in [(&pi_in, "pi_in"), (&pi_out, "pi_out"), (&pi_s, "pi_s")] {
            let dev = (m * m - m).amax();
            if dev > tol {
                return Err(TlmError::NotIdempotent {
                    which: name,
                    deviation: dev,
                });
            }
        }
        let sum_dev = (&pi_in + &pi_out + &pi_s - Mat::identity(n, n)).amax();
        if sum_dev > STRUCTURAL_TOL * scale {
            return Err(TlmError::NotComplementary {
                detail: "projections do not sum to the identity".into(),
                deviation: sum_dev,
            });
        }
        let ops = [("pi_in", &pi_in), ("pi_out", &pi_out), ("pi_s", &pi_s)];
        for (i, (na, a)) in ops.iter().enumerate() {
            for (j, (nb, b)) in ops.iter().enumerate() {
                if i == j {
                    continue;
                }
                let dev = (*a * *b).amax();
                if dev > tol {
                    return Err(TlmError::NotComplementary {
                        detail: format!("{na} * {nb} does not vanish"),
                        deviation: dev,
                    });
                }
            }
        }
        Ok(Self {
            pi_in,
            pi_out,
            pi_s,
        })
    }

    /// Diagonal 0/1 family for the ordering `[in | out | stub]`.
    pub fn coordinate_aligned(space: &StateSpace) -> Self {
        let n = space.dim();
        let diag = |lo: usize, hi: usize| {
            Mat::from_fn(n, n, |r, c| {
                if r == c && r >= lo && r < hi {
                    1.0
                } else {
                    0.0
                }
            })
        };
        let a = space.n_in;
        let b = a + space.n_out;
        Self {
            pi_in: diag(0, a),
            pi_out: diag(a, b),
            pi_s: diag(b, n),
        }
    }

    /// Family built from disjoint coordinate index sets covering `0..dim`.
    pub fn from_index_sets(
        dim: usize,
        incoming: &[usize],
        outgoing: &[usize],
        stub: &[usize],
    ) -> Result<Self> {
        let select = |idx: &[usize]| -> Result<Mat> {
            let mut m = Mat::zeros(dim, dim);
            for &i in idx {
                if i >= dim {
                    return Err(TlmError::DimensionMismatch {
                        context: "projection index set",
                        expected: dim,
                        found: i + 1,
                    });
                }
                m[(i, i)] = 1.0;
            }
            Ok(m)
        };
        Self::from_matrices(select(incoming)?, select(outgoing)?, select(stub)?)
    }

    pub fn dim(&self) -> usize {
        self.pi_in.nrows()
    }

    pub fn pi_in(&self) -> &Mat {
        &self.pi_in
    }

    pub fn pi_out(&self) -> &Mat {
        &self.pi_out
    }

    pub fn pi_s(&self) -> &Mat {
        &self.pi_s
    }

    /// `pi_l = pi_in + pi_out`.
    pub fn pi_link(&self) -> Mat {
        &self.pi_in + &self.pi_out
    }

    pub fn state_space(&self) -> StateSpace {
        StateSpace::real(
            range_basis(&self.pi_in).ncols(),
            range_basis(&self.pi_out).ncols(),
            range_basis(&self.pi_s).ncols(),
        )
    }
}

/// Orthonormal basis of the range of a projection.
fn range_basis(p: &Mat) -> Mat {
    if p.is_empty() {
        return Mat::zeros(p.nrows(), 0);
    }
    let svd = p.clone().svd(true, false);
    let u = svd.u.expect("svd requested u");
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > 0.5)
        .map(|(i, _)| i)
        .collect();
    let mut basis = Mat::zeros(p.nrows(), keep.len());
    for (c, &i) in keep.iter().enumerate() {
        basis.set_column(c, &u.column(i));
    }
    basis
}

/// Coordinates of the incoming and outgoing subspaces inside a link space.
///
/// `embed_*` maps wave coordinates into the link space, `extract_*` is the
/// matching left inverse composed with the projection, so that
/// `embed_in * extract_in = pi_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSplit {
    pub embed_in: Mat,
    pub extract_in: Mat,
    pub embed_out: Mat,
    pub extract_out: Mat,
}

impl LinkSplit {
    /// Link space `[z_in | z_out]` stacked coordinate-wise.
    pub fn coordinate(n_in: usize, n_out: usize) -> Self {
        let n = n_in + n_out;
        let embed_in = Mat::from_fn(n, n_in, |r, c| if r == c { 1.0 } else { 0.0 });
        let embed_out = Mat::from_fn(n, n_out, |r, c| if r == n_in + c { 1.0 } else { 0.0 });
        Self {
            extract_in: embed_in.transpose(),
            extract_out: embed_out.transpose(),
            embed_in,
            embed_out,
        }
    }

    /// Split derived from a pair of complementary projections on the link space.
    pub fn from_projections(pi_in: &Mat, pi_out: &Mat) -> Result<Self> {
        let n = pi_in.nrows();
        ProjectionFamily::from_matrices(pi_in.clone(), pi_out.clone(), Mat::zeros(n, n))?;
        let embed_in = range_basis(pi_in);
        let embed_out = range_basis(pi_out);
        Ok(Self {
            extract_in: embed_in.transpose() * pi_in,
            extract_out: embed_out.transpose() * pi_out,
            embed_in,
            embed_out,
        })
    }

    pub fn n_in(&self) -> usize {
        self.embed_in.ncols()
    }

    pub fn n_out(&self) -> usize {
        self.embed_out.ncols()
    }

    pub fn link_dim(&self) -> usize {
        self.embed_in.nrows()
    }

    pub fn pi_in(&self) -> Mat {
        &self.embed_in * &self.extract_in
    }

    pub fn pi_out(&self) -> Mat {
        &self.embed_out * &self.extract_out
    }

    /// Total link vector `z_in + z_out` from wave coordinates.
    pub fn total(&self, z_in: &Vector, z_out: &Vector) -> Vector {
        &self.embed_in * z_in + &self.embed_out * z_out
    }
}

/// The four scattering blocks of a cell in wave coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SBlocks {
    /// `n_out x n_in`
    pub k: Mat,
    /// `n_out x n_stub`
    pub l: Mat,
    /// `n_stub x n_in`
    pub m: Mat,
    /// `n_stub x n_stub`
    pub n: Mat,
    /// Time step in seconds.
    pub tau: f64,
}

/// Result of a stability gate evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityReport {
    pub stable: bool,
    pub norm: f64,
    pub margin: f64,
    pub kind: NormKind,
}

impl StabilityReport {
    fn from_norm(norm: f64, kind: NormKind) -> Self {
        Self {
            stable: norm < 1.0,
            norm,
            margin: 1.0 - norm,
            kind,
        }
    }
}

fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(TlmError::DimensionMismatch {
            context,
            expected,
            found,
        });
    }
    Ok(())
}

/// Real matrix times complex vector.
pub(crate) fn apply_real(a: &Mat, z: &CVector) -> CVector {
    let re = a * z.map(|c| c.re);
    let im = a * z.map(|c| c.im);
    CVector::from_fn(a.nrows(), |i, _| C64::new(re[i], im[i]))
}

impl SBlocks {
    pub fn new(k: Mat, l: Mat, m: Mat, n: Mat, tau: f64) -> Result<Self> {
        let (n_out, n_in) = k.shape();
        let n_stub = n.nrows();
        check_dim("N columns", n_stub, n.ncols())?;
        check_dim("L rows", n_out, l.nrows())?;
        check_dim("L columns", n_stub, l.ncols())?;
        check_dim("M rows", n_stub, m.nrows())?;
        check_dim("M columns", n_in, m.ncols())?;
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(TlmError::InvalidTimeStep(tau));
        }
        Ok(Self { k, l, m, n, tau })
    }

    /// Scalar blocks, handy for one-port fixtures.
    pub fn scalar(k: f64, l: f64, m: f64, n: f64, tau: f64) -> Self {
        let s = |x| Mat::from_element(1, 1, x);
        Self::new(s(k), s(l), s(m), s(n), tau).expect("scalar blocks are consistent")
    }

    /// Memoryless blocks: `z_out = K z_in`, no stub space.
    pub fn memoryless(k: Mat, tau: f64) -> Result<Self> {
        let (r, c) = k.shape();
        Self::new(k, Mat::zeros(r, 0), Mat::zeros(0, c), Mat::zeros(0, 0), tau)
    }

    /// Extracts the blocks of a full nodal operator `S` using a projection family.
    ///
    /// Blocks are expressed in orthonormal range coordinates of each projection.
    pub fn from_operator(s: &Mat, family: &ProjectionFamily, tau: f64) -> Result<Self> {
        check_dim("scattering operator", family.dim(), s.nrows())?;
        check_dim("scattering operator", family.dim(), s.ncols())?;
        let coords = |p: &Mat| {
            let e = range_basis(p);
            let x = e.transpose() * p;
            (e, x)
        };
        let (e_in, _) = coords(family.pi_in());
        let (_, x_out) = coords(family.pi_out());
        let (e_s, x_s) = coords(family.pi_s());
        Self::new(
            &x_out * s * &e_in,
            &x_out * s * &e_s,
            &x_s * s * &e_in,
            &x_s * s * &e_s,
            tau,
        )
    }

    /// Full operator `K + L + M + N` on the coordinate-aligned space `[in | out | stub]`.
    pub fn to_operator(&self) -> (Mat, ProjectionFamily) {
        let space = self.state_space();
        let n = space.dim();
        let (a, b) = (space.n_in, space.n_in + space.n_out);
        let mut s = Mat::zeros(n, n);
        s.view_mut((a, 0), self.k.shape()).copy_from(&self.k);
        s.view_mut((a, b), self.l.shape()).copy_from(&self.l);
        s.view_mut((b, 0), self.m.shape()).copy_from(&self.m);
        s.view_mut((b, b), self.n.shape()).copy_from(&self.n);
        (s, ProjectionFamily::coordinate_aligned(&space))
    }

    pub fn n_in(&self) -> usize {
        self.k.ncols()
    }

    pub fn n_out(&self) -> usize {
        self.k.nrows()
    }

    pub fn n_stub(&self) -> usize {
        self.n.nrows()
    }

    pub fn state_space(&self) -> StateSpace {
        StateSpace::real(self.n_in(), self.n_out(), self.n_stub())
    }

    pub fn zero_stub(&self) -> Vector {
        Vector::zeros(self.n_stub())
    }

    /// One rolling step: `z_out = K z_in + L s`, `s' = N s + M z_in`.
    pub fn scatter_step(&self, z_in: &Vector, stub: &Vector) -> Result<(Vector, Vector)> {
        check_dim("incident vector", self.n_in(), z_in.len())?;
        check_dim("stub vector", self.n_stub(), stub.len())?;
        let z_out = &self.k * z_in + &self.l * stub;
        let next = &self.n * stub + &self.m * z_in;
        Ok((z_out, next))
    }

    /// Complex-valued variant of [`SBlocks::scatter_step`].
    pub fn scatter_step_complex(
        &self,
        z_in: &CVector,
        stub: &CVector,
    ) -> Result<(CVector, CVector)> {
        check_dim("incident vector", self.n_in(), z_in.len())?;
        check_dim("stub vector", self.n_stub(), stub.len())?;
        let z_out = apply_real(&self.k, z_in) + apply_real(&self.l, stub);
        let next = apply_real(&self.n, stub) + apply_real(&self.m, z_in);
        Ok((z_out, next))
    }

    /// Response to a Dirac pulse `z0` at `t = 0`:
    /// `(K z0, L M z0, L N M z0, ..., L N^(steps-2) M z0)`.
    pub fn impulse_response(&self, z0: &Vector, steps: usize) -> Result<Vec<Vector>> {
        check_dim("impulse vector", self.n_in(), z0.len())?;
        let mut out = Vec::with_capacity(steps);
        if steps == 0 {
            return Ok(out);
        }
        out.push(&self.k * z0);
        let mut s = &self.m * z0;
        for _ in 1..steps {
            out.push(&self.l * &s);
            s = &self.n * s;
        }
        Ok(out)
    }

    /// `L' = L G^-1`, `M' = G M`, `N' = G N G^-1`; `K` is unchanged.
    pub fn gauge_transform(&self, g: &Mat) -> Result<Self> {
        check_dim("gauge rows", self.n_stub(), g.nrows())?;
        check_dim("gauge columns", self.n_stub(), g.ncols())?;
        if self.n_stub() == 0 {
            return Ok(self.clone());
        }
        let smin = min_singular_value(g);
        let smax = crate::linalg::largest_singular_value(g);
        if !(smin > STRUCTURAL_TOL * smax.max(1.0)) {
            return Err(TlmError::SingularGauge { sigma_min: smin });
        }
        let g_inv = g
            .clone()
            .try_inverse()
            .ok_or(TlmError::SingularGauge { sigma_min: smin })?;
        Ok(Self {
            k: self.k.clone(),
            l: &self.l * &g_inv,
            m: g * &self.m,
            n: g * &self.n * &g_inv,
            tau: self.tau,
        })
    }

    /// Stability gate `||N|| < 1`.
    pub fn check_stability(&self, kind: NormKind) -> StabilityReport {
        let norm = operator_norm(&self.n, kind).expect("N is square");
        StabilityReport::from_norm(norm, kind)
    }

    fn resolvent_times_m(&self, theta: f64) -> Result<CMat> {
        let ns = self.n_stub();
        let phase = C64::from_polar(1.0, theta);
        let mut a = CMat::from_fn(ns, ns, |r, c| C64::new(-self.n[(r, c)], 0.0));
        for i in 0..ns {
            a[(i, i)] += phase;
        }
        let smin = min_singular_value(&a);
        if !(smin > 1e-10) {
            return Err(TlmError::ResolventSingular {
                theta,
                sigma_min: smin,
            });
        }
        let m = crate::linalg::complexify(&self.m);
        a.lu().solve(&m).ok_or(TlmError::ResolventSingular {
            theta,
            sigma_min: smin,
        })
    }

    /// Stub contribution `L (e^(j theta) Id - N)^-1 M` with `theta = omega tau`.
    pub fn gauge_contribution(&self, theta: f64) -> Result<CMat> {
        if self.n_stub() == 0 {
            return Ok(CMat::zeros(self.n_out(), self.n_in()));
        }
        let x = self.resolvent_times_m(theta)?;
        Ok(crate::linalg::complexify(&self.l) * x)
    }

    /// Condensed S-matrix `K + L (e^(j theta) Id - N)^-1 M`.
    pub fn freq_condense(&self, theta: f64) -> Result<CMat> {
        Ok(crate::linalg::complexify(&self.k) + self.gauge_contribution(theta)?)
    }

    /// Block-diagonal direct sum of two block sets sharing one time step.
    pub fn direct_sum(&self, other: &SBlocks) -> Result<SBlocks> {
        if (self.tau - other.tau).abs() > 1e-15 * self.tau.abs().max(other.tau.abs()) {
            return Err(TlmError::LayoutMismatch(format!(
                "time steps differ: {} vs {}",
                self.tau, other.tau
            )));
        }
        use crate::linalg::direct_sum;
        SBlocks::new(
            direct_sum(&self.k, &other.k),
            direct_sum(&self.l, &other.l),
            direct_sum(&self.m, &other.m),
            direct_sum(&self.n, &other.n),
            self.tau,
        )
    }
}

/// One stage `(L_k, M_k, N_k)` of a multi-stage representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub l: Mat,
    pub m: Mat,
    pub n: Mat,
}

/// `z_out(t) = K z_in(t) + sum_k L_k sum_mu N_k^mu M_k z_in(t - (mu + k) tau)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiStageSBlocks {
    pub k: Mat,
    pub stages: Vec<Stage>,
    pub tau: f64,
}

/// Per-stage stub vectors and entry delay queues.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiStageState {
    stubs: Vec<Vector>,
    queues: Vec<VecDeque<Vector>>,
}

impl MultiStageSBlocks {
    pub fn new(k: Mat, stages: Vec<Stage>, tau: f64) -> Result<Self> {
        if stages.is_empty() {
            return Err(TlmError::DimensionMismatch {
                context: "multi-stage stage count",
                expected: 1,
                found: 0,
            });
        }
        for st in &stages {
            SBlocks::new(k.clone(), st.l.clone(), st.m.clone(), st.n.clone(), tau)?;
        }
        Ok(Self { k, stages, tau })
    }

    pub fn from_single(blocks: &SBlocks) -> Self {
        Self {
            k: blocks.k.clone(),
            stages: vec![Stage {
                l: blocks.l.clone(),
                m: blocks.m.clone(),
                n: blocks.n.clone(),
            }],
            tau: blocks.tau,
        }
    }

    pub fn order(&self) -> usize {
        self.stages.len()
    }

    pub fn zero_state(&self) -> MultiStageState {
        let n_in = self.k.ncols();
        MultiStageState {
            stubs: self
                .stages
                .iter()
                .map(|s| Vector::zeros(s.n.nrows()))
                .collect(),
            queues: (1..=self.stages.len())
                .map(|kappa| (0..kappa).map(|_| Vector::zeros(n_in)).collect())
                .collect(),
        }
    }

    /// Advances every stage by one step and returns `z_out(t)`.
    ///
    /// Stage `kappa` holds a FIFO of depth `kappa`; its stub is refreshed from
    /// the input delayed by `kappa` steps before it feeds the output.
    pub fn step(&self, z_in: &Vector, state: &mut MultiStageState) -> Result<Vector> {
        check_dim("incident vector", self.k.ncols(), z_in.len())?;
        let mut out = &self.k * z_in;
        for ((stage, stub), queue) in self
            .stages
            .iter()
            .zip(state.stubs.iter_mut())
            .zip(state.queues.iter_mut())
        {
            queue.push_back(z_in.clone());
            let delayed = queue.pop_front().expect("queue depth is kappa >= 1");
            *stub = &stage.n * &*stub + &stage.m * delayed;
            out += &stage.l * &*stub;
        }
        Ok(out)
    }

    /// Every `N_k` must pass the gate; the report carries the worst norm.
    pub fn check_stability(&self, kind: NormKind) -> StabilityReport {
        let worst = self
            .stages
            .iter()
            .map(|s| operator_norm(&s.n, kind).expect("N is square"))
            .fold(0.0, f64::max);
        StabilityReport::from_norm(worst, kind)
    }
}

/// Identity of the requested dimension, used as the trivial gauge.
pub fn identity_gauge(n: usize) -> Mat {
    DMatrix::identity(n, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use std::f64::consts::PI;

    fn scalar_fixture() -> SBlocks {
        SBlocks::scalar(0.5, 1.0, 0.25, 0.5, 1.0)
    }

    #[test]
    fn coordinate_aligned_family_partitions_identity() {
        let fam = ProjectionFamily::coordinate_aligned(&StateSpace::real(2, 2, 1));
        let sum = fam.pi_in() + fam.pi_out() + fam.pi_s();
        assert_eq!(sum, Mat::identity(5, 5));
        assert_eq!(fam.pi_in()[(0, 0)], 1.0);
        assert_eq!(fam.pi_out()[(3, 3)], 1.0);
        assert_eq!(fam.pi_s()[(4, 4)], 1.0);
    }

    #[test]
    fn empty_stub_space_gives_zero_projection() {
        let fam = ProjectionFamily::coordinate_aligned(&StateSpace::real(2, 2, 0));
        assert_eq!(fam.pi_s(), &Mat::zeros(4, 4));
    }

    #[test]
    fn impedance_projections_with_unit_impedance() {
        // (u, i) link space with z = y = 1 plus no stubs
        let h = |s: f64| {
            let mut m = Mat::zeros(6, 6);
            for i in 0..3 {
                m[(i, i)] = 0.5;
                m[(i + 3, i + 3)] = 0.5;
                m[(i, i + 3)] = 0.5 * s;
                m[(i + 3, i)] = 0.5 * s;
            }
            m
        };
        let fam = ProjectionFamily::from_matrices(h(1.0), h(-1.0), Mat::zeros(6, 6)).unwrap();
        assert!((fam.pi_in() * fam.pi_in() - fam.pi_in()).amax() < 1e-15);
        assert!((fam.pi_in() * fam.pi_out()).amax() < 1e-15);
    }

    #[test]
    fn rejects_non_idempotent_and_overlapping() {
        let two = Mat::identity(2, 2) * 2.0;
        let z = Mat::zeros(2, 2);
        assert!(matches!(
            ProjectionFamily::from_matrices(two, z.clone(), z.clone()),
            Err(TlmError::NotIdempotent { which: "pi_in", .. })
        ));
        let id = Mat::identity(2, 2);
        assert!(matches!(
            ProjectionFamily::from_matrices(id.clone(), id, z),
            Err(TlmError::NotComplementary { .. })
        ));
    }

    #[test]
    fn index_sets_build_family() {
        let fam = ProjectionFamily::from_index_sets(4, &[0, 2], &[1], &[3]).unwrap();
        assert_eq!(fam.state_space(), StateSpace::real(2, 1, 1));
        assert!(ProjectionFamily::from_index_sets(3, &[0], &[1], &[]).is_err());
    }

    #[test]
    fn pass_through_and_decoupled_stub() {
        let b = SBlocks::new(
            Mat::identity(2, 2),
            Mat::zeros(2, 1),
            Mat::zeros(1, 2),
            Mat::zeros(1, 1),
            1.0,
        )
        .unwrap();
        let z = Vector::from_vec(vec![1.5, -2.0]);
        let (out, s) = b.scatter_step(&z, &Vector::from_element(1, 3.0)).unwrap();
        assert_eq!(out, z);
        assert_eq!(s, Vector::zeros(1));

        let b = SBlocks::new(
            Mat::from_row_slice(1, 1, &[0.3]),
            Mat::zeros(1, 2),
            Mat::from_row_slice(2, 1, &[1.0, 2.0]),
            Mat::identity(2, 2),
            1.0,
        )
        .unwrap();
        let (out, _) = b
            .scatter_step(
                &Vector::from_element(1, 2.0),
                &Vector::from_vec(vec![9.0, 9.0]),
            )
            .unwrap();
        assert!((out[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn scalar_outgoing_sequence_halves() {
        let b = scalar_fixture();
        let mut s = b.zero_stub();
        let mut seq = Vec::new();
        for t in 0..6 {
            let z = Vector::from_element(1, if t == 0 { 1.0 } else { 0.0 });
            let (out, next) = b.scatter_step(&z, &s).unwrap();
            seq.push(out[0]);
            s = next;
        }
        let expect = [0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625];
        for (a, e) in seq.iter().zip(expect) {
            assert!((a - e).abs() < 1e-15);
        }
    }

    #[test]
    fn impulse_response_with_nilpotent_stub() {
        let b = SBlocks::new(
            Mat::from_row_slice(1, 1, &[2.0]),
            Mat::from_row_slice(1, 1, &[3.0]),
            Mat::from_row_slice(1, 1, &[5.0]),
            Mat::zeros(1, 1),
            1.0,
        )
        .unwrap();
        let r = b
            .impulse_response(&Vector::from_element(1, 1.0), 5)
            .unwrap();
        let vals: Vec<f64> = r.iter().map(|v| v[0]).collect();
        assert_eq!(vals, vec![2.0, 15.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn impulse_response_matches_rolling_steps() {
        let b = scalar_fixture();
        let r = b
            .impulse_response(&Vector::from_element(1, 2.0), 8)
            .unwrap();
        let mut s = b.zero_stub();
        for (t, expected) in r.iter().enumerate() {
            let z = Vector::from_element(1, if t == 0 { 2.0 } else { 0.0 });
            let (out, next) = b.scatter_step(&z, &s).unwrap();
            assert!((out[0] - expected[0]).abs() < 1e-15);
            s = next;
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let b = scalar_fixture();
        assert!(matches!(
            b.scatter_step(&Vector::zeros(2), &Vector::zeros(1)),
            Err(TlmError::DimensionMismatch { .. })
        ));
        assert!(SBlocks::new(
            Mat::zeros(2, 2),
            Mat::zeros(1, 1),
            Mat::zeros(1, 2),
            Mat::zeros(1, 1),
            1.0
        )
        .is_err());
    }

    #[test]
    fn identity_and_scalar_gauge() {
        let b = scalar_fixture();
        assert_eq!(b.gauge_transform(&identity_gauge(1)).unwrap(), b);
        let g = b.gauge_transform(&Mat::from_element(1, 1, 2.0)).unwrap();
        assert_eq!(g.k, b.k);
        assert!((g.l[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((g.m[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((g.n[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn singular_gauge_is_rejected() {
        let b = SBlocks::new(
            Mat::zeros(1, 1),
            Mat::zeros(1, 2),
            Mat::zeros(2, 1),
            Mat::zeros(2, 2),
            1.0,
        )
        .unwrap();
        let g = Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            b.gauge_transform(&g),
            Err(TlmError::SingularGauge { .. })
        ));
    }

    #[test]
    fn stability_gate_cases() {
        let r = SBlocks::scalar(0.0, 0.0, 0.0, 0.0, 1.0).check_stability(NormKind::SpectralRadius);
        assert!(r.stable);
        assert_eq!(r.margin, 1.0);
        let r = SBlocks::scalar(0.0, 1.0, 1.0, 1.0, 1.0).check_stability(NormKind::SpectralRadius);
        assert!(!r.stable);
        assert!(r.margin.abs() < 1e-15);
    }

    #[test]
    fn condensation_with_zero_stub_operator() {
        let b = SBlocks::new(
            Mat::from_row_slice(2, 2, &[0.1, 0.2, 0.3, 0.4]),
            Mat::from_row_slice(2, 1, &[1.0, -1.0]),
            Mat::from_row_slice(1, 2, &[0.5, 0.25]),
            Mat::zeros(1, 1),
            1.0,
        )
        .unwrap();
        let s = b.freq_condense(0.0).unwrap();
        let expect = &b.k + &b.l * &b.m;
        assert!((s.map(|c| c.re) - expect).amax() < 1e-15);
        assert!(s.map(|c| c.im).amax() < 1e-15);
    }

    #[test]
    fn gauge_contribution_splits_condensed_matrix() {
        let b = scalar_fixture();
        let theta = PI / 3.0;
        let s = b.freq_condense(theta).unwrap();
        let g = b.gauge_contribution(theta).unwrap();
        let diff = &s - crate::linalg::complexify(&b.k) - &g;
        assert!(diff.iter().fold(0.0_f64, |a, c| a.max(c.norm())) < 1e-15);

        let no_l = SBlocks::scalar(0.7, 0.0, 1.0, 0.5, 1.0);
        assert!(
            no_l.gauge_contribution(theta)
                .unwrap()
                .iter()
                .fold(0.0_f64, |a, c| a.max(c.norm()))
                < 1e-15
        );
        let no_k = SBlocks::scalar(0.0, 1.0, 0.25, 0.5, 1.0);
        let d = no_k.freq_condense(theta).unwrap() - no_k.gauge_contribution(theta).unwrap();
        assert!(d.iter().fold(0.0_f64, |a, c| a.max(c.norm())) < 1e-15);
    }

    #[test]
    fn resolvent_on_the_spectrum_is_singular() {
        let b = SBlocks::scalar(0.0, 1.0, 1.0, 1.0, 1.0);
        assert!(matches!(
            b.freq_condense(0.0),
            Err(TlmError::ResolventSingular { .. })
        ));
    }

    #[test]
    fn operator_round_trip() {
        let b = SBlocks::new(
            Mat::from_row_slice(2, 1, &[0.1, 0.2]),
            Mat::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]),
            Mat::from_row_slice(2, 1, &[5.0, 6.0]),
            Mat::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 0.2]),
            0.5,
        )
        .unwrap();
        let (s, fam) = b.to_operator();
        let back = SBlocks::from_operator(&s, &fam, 0.5).unwrap();
        assert!(max_abs_diff(&back.k, &b.k) < 1e-15);
        assert!(max_abs_diff(&back.l, &b.l) < 1e-15);
        assert!(max_abs_diff(&back.m, &b.m) < 1e-15);
        assert!(max_abs_diff(&back.n, &b.n) < 1e-15);
    }

    #[test]
    fn multi_stage_single_stage_matches_scatter_step() {
        let b = SBlocks::new(
            Mat::from_row_slice(1, 2, &[0.3, -0.1]),
            Mat::from_row_slice(1, 2, &[1.0, 0.5]),
            Mat::from_row_slice(2, 2, &[0.2, 0.1, -0.3, 0.4]),
            Mat::from_row_slice(2, 2, &[0.5, 0.1, 0.0, -0.4]),
            1.0,
        )
        .unwrap();
        let ms = MultiStageSBlocks::from_single(&b);
        let mut state = ms.zero_state();
        let mut s = b.zero_stub();
        for t in 0..20 {
            let z = Vector::from_vec(vec![(t as f64 * 0.7).sin(), (t as f64 * 0.3).cos()]);
            let (expect, next) = b.scatter_step(&z, &s).unwrap();
            s = next;
            let got = ms.step(&z, &mut state).unwrap();
            assert!((got - expect).amax() < 1e-15);
        }
    }

    #[test]
    fn multi_stage_second_order_lag_two_term() {
        let (k, l1, m1, n1, l2, m2, n2) = (0.1, 0.7, 0.3, 0.5, 1.3, 0.9, 0.2);
        let s = |x| Mat::from_element(1, 1, x);
        let ms = MultiStageSBlocks::new(
            s(k),
            vec![
                Stage {
                    l: s(l1),
                    m: s(m1),
                    n: s(n1),
                },
                Stage {
                    l: s(l2),
                    m: s(m2),
                    n: s(n2),
                },
            ],
            1.0,
        )
        .unwrap();
        let mut state = ms.zero_state();
        let mut seq = Vec::new();
        for t in 0..5 {
            let z = Vector::from_element(1, if t == 0 { 1.0 } else { 0.0 });
            seq.push(ms.step(&z, &mut state).unwrap()[0]);
        }
        // direct series evaluation of each lag
        let series = |lag: i32| -> f64 {
            let mut acc = if lag == 0 { k } else { 0.0 };
            for (kappa, (l, m, n)) in [(1, (l1, m1, n1)), (2, (l2, m2, n2))] {
                let mu = lag - kappa;
                if mu >= 0 {
                    acc += l * n.powi(mu) * m;
                }
            }
            acc
        };
        for (lag, v) in seq.iter().enumerate() {
            assert!((v - series(lag as i32)).abs() < 1e-15, "lag {lag}");
        }
        assert!((seq[2] - (l2 * m2 + l1 * n1 * m1)).abs() < 1e-15);
    }

    #[test]
    fn multi_stage_without_entry_is_memoryless() {
        let s = |x| Mat::from_element(1, 1, x);
        let ms = MultiStageSBlocks::new(
            s(0.4),
            vec![
                Stage {
                    l: s(1.0),
                    m: s(0.0),
                    n: s(0.9),
                },
                Stage {
                    l: s(2.0),
                    m: s(0.0),
                    n: s(0.1),
                },
            ],
            1.0,
        )
        .unwrap();
        let mut st = ms.zero_state();
        for t in 0..10 {
            let z = Vector::from_element(1, t as f64 + 1.0);
            assert!((ms.step(&z, &mut st).unwrap()[0] - 0.4 * (t as f64 + 1.0)).abs() < 1e-15);
        }
        assert!(MultiStageSBlocks::new(s(0.1), vec![], 1.0).is_err());
    }

    #[test]
    fn link_split_from_projections_recovers_projections() {
        let y = 0.5;
        let z = 1.0 / y;
        let mut pin = Mat::zeros(2, 2);
        pin[(0, 0)] = 0.5;
        pin[(0, 1)] = 0.5 * z;
        pin[(1, 0)] = 0.5 * y;
        pin[(1, 1)] = 0.5;
        let pout = Mat::identity(2, 2) - &pin;
        let split = LinkSplit::from_projections(&pin, &pout).unwrap();
        assert!(max_abs_diff(&split.pi_in(), &pin) < 1e-14);
        assert!(max_abs_diff(&split.pi_out(), &pout) < 1e-14);
        assert!(max_abs_diff(&(&split.extract_in * &split.embed_in), &Mat::identity(1, 1)) < 1e-14);
    }
}
