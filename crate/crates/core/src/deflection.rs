//! Model equations on port/node histories and deflected TLM systems.
//!
//! Step indexing: step `t` receives `z_in(t)` and produces the outgoing
//! wave that leaves at `t + tau`. With that convention
//!
//! ```text
//! node_t = E_in z_in(t) + E_out z_out(t + tau)     (state at t + tau/2)
//! port_t = E_in z_in(t) + E_out z_out(t)
//! F_t    = sum_mu phi_mu node_(t - mu) + psi_mu port_(t - mu)
//! ```
//!
//! A deflected system adds `D_t` to the outgoing wave of the base map so that
//! the trajectory satisfies `F_t = J_t`, where `J_t` may read nodes up to
//! `t - tau/2` and ports up to `t`.

use std::collections::{BTreeMap, VecDeque};

use crate::error::{Result, TlmError};
use crate::linalg::{pseudo_inverse, Mat, Vector};
use crate::scattering::{LinkSplit, SBlocks};

/// Fixed-depth history of state vectors; `entry(0)` is the most recent.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    depth: usize,
    dim: usize,
    entries: VecDeque<Vector>,
    zero: Vector,
}

impl History {
    pub fn new(depth: usize, dim: usize) -> Self {
        Self {
            depth: depth.max(1),
            dim,
            entries: VecDeque::with_capacity(depth.max(1)),
            zero: Vector::zeros(dim),
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn push(&mut self, v: Vector) {
        debug_assert_eq!(v.len(), self.dim);
        if self.entries.len() == self.depth {
            self.entries.pop_back();
        }
        self.entries.push_front(v);
    }

    /// State `mu` steps back; zero before the process start or beyond the depth.
    pub fn entry(&self, mu: usize) -> &Vector {
        self.entries.get(mu).unwrap_or(&self.zero)
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}

/// `F = sum_mu phi_mu z^n(t + tau/2 - mu tau) + psi_mu z^p(t - mu tau)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelForm {
    pub phi: BTreeMap<usize, Mat>,
    pub psi: BTreeMap<usize, Mat>,
    image_dim: usize,
    link_dim: usize,
}

impl ModelForm {
    pub fn new(image_dim: usize, link_dim: usize) -> Self {
        Self {
            phi: BTreeMap::new(),
            psi: BTreeMap::new(),
            image_dim,
            link_dim,
        }
    }

    fn check(&self, m: &Mat) -> Result<()> {
        if m.nrows() != self.image_dim {
            return Err(TlmError::DimensionMismatch {
                context: "model coefficient rows",
                expected: self.image_dim,
                found: m.nrows(),
            });
        }
        if m.ncols() != self.link_dim {
            return Err(TlmError::DimensionMismatch {
                context: "model coefficient columns",
                expected: self.link_dim,
                found: m.ncols(),
            });
        }
        Ok(())
    }

    pub fn with_phi(mut self, mu: usize, m: Mat) -> Result<Self> {
        self.check(&m)?;
        self.phi.insert(mu, m);
        Ok(self)
    }

    pub fn with_psi(mut self, mu: usize, m: Mat) -> Result<Self> {
        self.check(&m)?;
        self.psi.insert(mu, m);
        Ok(self)
    }

    pub fn image_dim(&self) -> usize {
        self.image_dim
    }

    pub fn link_dim(&self) -> usize {
        self.link_dim
    }

    /// Largest lag with a coefficient present.
    pub fn order(&self) -> usize {
        let a = self.phi.keys().next_back().copied().unwrap_or(0);
        let b = self.psi.keys().next_back().copied().unwrap_or(0);
        a.max(b)
    }

    pub fn phi(&self, mu: usize) -> Mat {
        self.phi
            .get(&mu)
            .cloned()
            .unwrap_or_else(|| Mat::zeros(self.image_dim, self.link_dim))
    }

    pub fn psi(&self, mu: usize) -> Mat {
        self.psi
            .get(&mu)
            .cloned()
            .unwrap_or_else(|| Mat::zeros(self.image_dim, self.link_dim))
    }

    /// Left-hand side of the model equation; `node.entry(0)` is `z^n(t + tau/2)`.
    pub fn eval(&self, node: &History, port: &History) -> Result<Vector> {
        for h in [node, port] {
            if h.dim() != self.link_dim {
                return Err(TlmError::DimensionMismatch {
                    context: "model history",
                    expected: self.link_dim,
                    found: h.dim(),
                });
            }
        }
        let mut acc = Vector::zeros(self.image_dim);
        for (&mu, m) in &self.phi {
            acc += m * node.entry(mu);
        }
        for (&mu, m) in &self.psi {
            acc += m * port.entry(mu);
        }
        Ok(acc)
    }

    /// `self - other`, coefficient-wise.
    pub fn difference(&self, other: &ModelForm) -> Result<ModelForm> {
        if self.image_dim != other.image_dim || self.link_dim != other.link_dim {
            return Err(TlmError::InvalidModelForm(
                "model forms act on different spaces".into(),
            ));
        }
        let mut out = ModelForm::new(self.image_dim, self.link_dim);
        let keys = |a: &BTreeMap<usize, Mat>, b: &BTreeMap<usize, Mat>| {
            a.keys()
                .chain(b.keys())
                .copied()
                .collect::<std::collections::BTreeSet<_>>()
        };
        for mu in keys(&self.phi, &other.phi) {
            let d = self.phi(mu) - other.phi(mu);
            if d.amax() > 0.0 {
                out.phi.insert(mu, d);
            }
        }
        for mu in keys(&self.psi, &other.psi) {
            let d = self.psi(mu) - other.psi(mu);
            if d.amax() > 0.0 {
                out.psi.insert(mu, d);
            }
        }
        Ok(out)
    }

    pub fn is_zero(&self) -> bool {
        self.phi
            .values()
            .chain(self.psi.values())
            .all(|m| m.amax() == 0.0)
    }

    /// Pseudo-inverse of `phi_0 E_out`; fails when it is not injective.
    pub fn lead_inverse(&self, split: &LinkSplit) -> Result<Mat> {
        let g = self.phi(0) * &split.embed_out;
        let (pinv, rank) = pseudo_inverse(&g, 1e-12);
        if rank < split.n_out() {
            return Err(TlmError::NonInvertibleLeadCoefficient {
                reason: format!(
                    "phi_0 restricted to the outgoing subspace has rank {rank}, needs {}",
                    split.n_out()
                ),
            });
        }
        Ok(pinv)
    }
}

/// Right-hand side `J_t` of a perturbed model equation.
pub trait Perturbation: Send {
    fn image_dim(&self) -> usize;

    /// How many past node/port states `evaluate` reads.
    fn lookback(&self) -> usize {
        1
    }

    /// `node_minus.entry(0)` is `z^n(t - tau/2)`; `port.entry(0)` is `z^p(t)`.
    fn evaluate(&mut self, step: usize, node_minus: &History, port: &History) -> Vector;
}

/// `J = 0`.
#[derive(Debug, Clone)]
pub struct ZeroPerturbation {
    pub image_dim: usize,
}

impl Perturbation for ZeroPerturbation {
    fn image_dim(&self) -> usize {
        self.image_dim
    }

    fn evaluate(&mut self, _step: usize, _node: &History, _port: &History) -> Vector {
        Vector::zeros(self.image_dim)
    }
}

/// `J_t = sum_mu a_mu z^n(t - tau/2 - mu tau) + b_mu z^p(t - mu tau) + c`.
#[derive(Debug, Clone)]
pub struct LinearPerturbation {
    pub node: BTreeMap<usize, Mat>,
    pub port: BTreeMap<usize, Mat>,
    pub constant: Vector,
}

impl LinearPerturbation {
    pub fn constant(c: Vector) -> Self {
        Self {
            node: BTreeMap::new(),
            port: BTreeMap::new(),
            constant: c,
        }
    }
}

impl Perturbation for LinearPerturbation {
    fn image_dim(&self) -> usize {
        self.constant.len()
    }

    fn lookback(&self) -> usize {
        let a = self.node.keys().next_back().copied().unwrap_or(0);
        let b = self.port.keys().next_back().copied().unwrap_or(0);
        a.max(b) + 1
    }

    fn evaluate(&mut self, _step: usize, node: &History, port: &History) -> Vector {
        let mut acc = self.constant.clone();
        for (&mu, m) in &self.node {
            acc += m * node.entry(mu);
        }
        for (&mu, m) in &self.port {
            acc += m * port.entry(mu);
        }
        acc
    }
}

/// Perturbation from a closure.
pub struct FnPerturbation<F> {
    pub image_dim: usize,
    pub lookback: usize,
    pub f: F,
}

impl<F> Perturbation for FnPerturbation<F>
where
    F: FnMut(usize, &History, &History) -> Vector + Send,
{
    fn image_dim(&self) -> usize {
        self.image_dim
    }

    fn lookback(&self) -> usize {
        self.lookback
    }

    fn evaluate(&mut self, step: usize, node: &History, port: &History) -> Vector {
        (self.f)(step, node, port)
    }
}

/// Base reflection map `R` plus the deflection `D` solving `F_t = J_t`.
pub struct DeflectedSystem {
    base: SBlocks,
    split: LinkSplit,
    model: ModelForm,
    delta: Option<ModelForm>,
    perturbation: Box<dyn Perturbation>,
    lead_inv: Mat,
    /// `(phi_mu + psi_(mu-1)) E_out` for `mu >= 1`.
    carry: Vec<Mat>,
    stub: Vector,
    step: usize,
    last_out: Vector,
    base_last_out: Vector,
    node: History,
    port: History,
    base_node: History,
    base_port: History,
    d_history: History,
    last_j: Vector,
    last_i: Vector,
    last_residual: f64,
}

impl std::fmt::Debug for DeflectedSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DeflectedSystem")
            .field("base", &self.base)
            .field("model", &self.model)
            .field("step", &self.step)
            .finish_non_exhaustive()
    }
}

impl DeflectedSystem {
    /// `model` is the equation the deflected trajectory should satisfy with
    /// right-hand side `J`; `base_model` is the one satisfied by `base`.
    pub fn new(
        base: SBlocks,
        split: LinkSplit,
        model: ModelForm,
        perturbation: Box<dyn Perturbation>,
    ) -> Result<Self> {
        Self::with_base_model(base, split, model.clone(), model, perturbation)
    }

    /// Variant where the target equation differs from the one the base map solves.
    pub fn with_base_model(
        base: SBlocks,
        split: LinkSplit,
        base_model: ModelForm,
        model: ModelForm,
        perturbation: Box<dyn Perturbation>,
    ) -> Result<Self> {
        if split.n_in() != base.n_in() || split.n_out() != base.n_out() {
            return Err(TlmError::LayoutMismatch(format!(
                "link split has {}/{} ports, blocks have {}/{}",
                split.n_in(),
                split.n_out(),
                base.n_in(),
                base.n_out()
            )));
        }
        if model.link_dim() != split.link_dim() {
            return Err(TlmError::DimensionMismatch {
                context: "model link dimension",
                expected: split.link_dim(),
                found: model.link_dim(),
            });
        }
        if perturbation.image_dim() != model.image_dim() {
            return Err(TlmError::DimensionMismatch {
                context: "perturbation image dimension",
                expected: model.image_dim(),
                found: perturbation.image_dim(),
            });
        }
        let lead_inv = model.lead_inverse(&split)?;
        let delta = model.difference(&base_model)?;
        let delta = (!delta.is_zero()).then_some(delta);
        let order = model.order();
        let carry = (1..=order + 1)
            .map(|mu| {
                let mut c = model.phi(mu);
                c += model.psi(mu - 1);
                c * &split.embed_out
            })
            .collect();
        let depth = (order + 2).max(perturbation.lookback() + 1);
        let ld = split.link_dim();
        let n_out = split.n_out();
        Ok(Self {
            stub: base.zero_stub(),
            last_out: Vector::zeros(n_out),
            base_last_out: Vector::zeros(n_out),
            node: History::new(depth, ld),
            port: History::new(depth, ld),
            base_node: History::new(depth, ld),
            base_port: History::new(depth, ld),
            d_history: History::new(order + 2, n_out),
            last_j: Vector::zeros(model.image_dim()),
            last_i: Vector::zeros(n_out),
            last_residual: 0.0,
            step: 0,
            base,
            split,
            model,
            delta,
            perturbation,
            lead_inv,
            carry,
        })
    }

    pub fn base(&self) -> &SBlocks {
        &self.base
    }

    pub fn split(&self) -> &LinkSplit {
        &self.split
    }

    pub fn model(&self) -> &ModelForm {
        &self.model
    }

    pub fn lead_inverse(&self) -> &Mat {
        &self.lead_inv
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn node_history(&self) -> &History {
        &self.node
    }

    pub fn port_history(&self) -> &History {
        &self.port
    }

    pub fn deflection_history(&self) -> &History {
        &self.d_history
    }

    /// Interaction term `I_t = (phi_0 E_out)^+ J_t` of the last step.
    pub fn interaction(&self) -> &Vector {
        &self.last_i
    }

    pub fn last_j(&self) -> &Vector {
        &self.last_j
    }

    /// `|F_t - J_t|` after the last step.
    pub fn last_residual(&self) -> f64 {
        self.last_residual
    }

    pub fn perturbation_mut(&mut self) -> &mut dyn Perturbation {
        self.perturbation.as_mut()
    }

    pub fn reset(&mut self) {
        self.stub = self.base.zero_stub();
        self.last_out.fill(0.0);
        self.base_last_out.fill(0.0);
        for h in [
            &mut self.node,
            &mut self.port,
            &mut self.base_node,
            &mut self.base_port,
            &mut self.d_history,
        ] {
            h.clear();
        }
        self.last_j.fill(0.0);
        self.last_i.fill(0.0);
        self.last_residual = 0.0;
        self.step = 0;
    }

    /// `D_t` from `J_t`, the model change on the base trajectory and past deflections.
    fn deflection_recursion(&self, j: &Vector) -> Result<Vector> {
        let mut rhs = j.clone();
        if let Some(delta) = &self.delta {
            rhs -= delta.eval(&self.base_node, &self.base_port)?;
        }
        for (i, c) in self.carry.iter().enumerate() {
            // d_history.entry(0) is D_(t-1) at this point
            rhs -= c * self.d_history.entry(i);
        }
        Ok(&self.lead_inv * rhs)
    }

    /// Consumes `z_in(t)` and returns the outgoing wave `z_out(t + tau)`.
    pub fn step(&mut self, z_in: &Vector) -> Result<Vector> {
        self.advance(z_in, None)
    }

    /// Like [`DeflectedSystem::step`] with `J_t` supplied by the caller
    /// instead of the owned perturbation.
    pub fn step_with_forcing(&mut self, z_in: &Vector, j: Vector) -> Result<Vector> {
        self.advance(z_in, Some(j))
    }

    fn advance(&mut self, z_in: &Vector, forced: Option<Vector>) -> Result<Vector> {
        if z_in.len() != self.base.n_in() {
            return Err(TlmError::DimensionMismatch {
                context: "incident vector",
                expected: self.base.n_in(),
                found: z_in.len(),
            });
        }
        let e_in = &self.split.embed_in;
        let e_out = &self.split.embed_out;
        let port = e_in * z_in + e_out * &self.last_out;
        self.port.push(port);

        let (base_out, next_stub) = self.base.scatter_step(z_in, &self.stub)?;
        self.stub = next_stub;
        if self.delta.is_some() {
            self.base_port
                .push(e_in * z_in + e_out * &self.base_last_out);
            self.base_node.push(e_in * z_in + e_out * &base_out);
        }
        self.base_last_out = base_out.clone();

        let j = match forced {
            Some(j) => j,
            None => self
                .perturbation
                .evaluate(self.step, &self.node, &self.port),
        };
        if j.len() != self.model.image_dim() {
            return Err(TlmError::DimensionMismatch {
                context: "perturbation output",
                expected: self.model.image_dim(),
                found: j.len(),
            });
        }
        let d = self.deflection_recursion(&j)?;
        self.last_i = &self.lead_inv * &j;
        let out = if d.iter().all(|&x| x == 0.0) {
            base_out
        } else {
            base_out + &d
        };
        self.node.push(e_in * z_in + e_out * &out);
        self.d_history.push(d);

        let f = self.model.eval(&self.node, &self.port)?;
        self.last_residual = (f - &j).norm();
        self.last_j = j;
        self.last_out = out.clone();
        self.step += 1;
        Ok(out)
    }
}

/// Outcome of [`verify_deflection`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeflectionReport {
    pub steps: usize,
    pub max_residual: f64,
    pub within_tol: bool,
}

/// Drives a deflected system and records `max_t |F_t - J_t|`.
pub fn verify_deflection(
    system: &mut DeflectedSystem,
    mut excitation: impl FnMut(usize) -> Vector,
    steps: usize,
    tol: f64,
) -> Result<DeflectionReport> {
    let mut worst: f64 = 0.0;
    for t in 0..steps {
        let z = excitation(t);
        system.step(&z)?;
        let r = system.last_residual();
        worst = if r.is_nan() { f64::NAN } else { worst.max(r) };
    }
    Ok(DeflectionReport {
        steps,
        max_residual: worst,
        within_tol: worst <= tol,
    })
}

/// Deflection sequence for a prescribed `J` sequence with no model change.
///
/// `D_t = (phi_0 E_out)^+ [ J_t - sum_(mu>=1) (phi_mu + psi_(mu-1)) E_out D_(t-mu) ]`.
pub fn deflection_sequence(
    model: &ModelForm,
    split: &LinkSplit,
    j: &[Vector],
) -> Result<Vec<Vector>> {
    let lead_inv = model.lead_inverse(split)?;
    let order = model.order();
    let mut out: Vec<Vector> = Vec::with_capacity(j.len());
    for (t, jt) in j.iter().enumerate() {
        let mut rhs = jt.clone();
        for mu in 1..=(order + 1).min(t) {
            let c = (model.phi(mu) + model.psi(mu - 1)) * &split.embed_out;
            rhs -= c * &out[t - mu];
        }
        out.push(&lead_inv * rhs);
    }
    Ok(out)
}

/// First-order realization of a model with support `mu <= 1`.
///
/// Solving `F_t = 0` for the outgoing wave gives
/// `b_t = A0 a_t + A1 a_(t-1) + V b_(t-1) + V1 b_(t-2)`; the stub carries
/// `A1 a + V b` (and `b_(t-1)` when `psi_1` is present).
pub fn realize_first_order(model: &ModelForm, split: &LinkSplit, tau: f64) -> Result<SBlocks> {
    if model.order() > 1 {
        return Err(TlmError::InvalidModelForm(format!(
            "first-order realization needs lags <= 1, model has lag {}",
            model.order()
        )));
    }
    let g_inv = model.lead_inverse(split)?;
    let (e_in, e_out) = (&split.embed_in, &split.embed_out);
    let a0 = -(&g_inv * (model.phi(0) + model.psi(0)) * e_in);
    let a1 = -(&g_inv * (model.phi(1) + model.psi(1)) * e_in);
    let v = -(&g_inv * (model.phi(1) + model.psi(0)) * e_out);
    let m = &a1 + &v * &a0;
    let n_out = split.n_out();
    match model.psi.get(&1).filter(|p| p.amax() > 0.0) {
        None => SBlocks::new(a0, Mat::identity(n_out, n_out), m, v, tau),
        Some(psi1) => {
            let v1 = -(&g_inv * psi1 * e_out);
            let n_in = split.n_in();
            let mut l = Mat::zeros(n_out, 2 * n_out);
            l.view_mut((0, 0), (n_out, n_out))
                .copy_from(&Mat::identity(n_out, n_out));
            let mut mm = Mat::zeros(2 * n_out, n_in);
            mm.view_mut((0, 0), (n_out, n_in)).copy_from(&m);
            mm.view_mut((n_out, 0), (n_out, n_in)).copy_from(&a0);
            let mut nn = Mat::zeros(2 * n_out, 2 * n_out);
            nn.view_mut((0, 0), (n_out, n_out)).copy_from(&v);
            nn.view_mut((0, n_out), (n_out, n_out)).copy_from(&v1);
            nn.view_mut((n_out, 0), (n_out, n_out))
                .copy_from(&Mat::identity(n_out, n_out));
            SBlocks::new(a0, l, mm, nn, tau)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(x: f64) -> Mat {
        Mat::from_element(1, 1, x)
    }

    /// Scalar model on link space (a, b): phi0 acts on b only.
    fn scalar_model(phi0: f64, phi1: f64, psi0: f64) -> (ModelForm, LinkSplit) {
        let split = LinkSplit::coordinate(1, 1);
        let m = ModelForm::new(1, 2)
            .with_phi(0, Mat::from_row_slice(1, 2, &[0.3, phi0]))
            .unwrap()
            .with_phi(1, Mat::from_row_slice(1, 2, &[0.1, phi1]))
            .unwrap()
            .with_psi(0, Mat::from_row_slice(1, 2, &[-0.2, psi0]))
            .unwrap();
        (m, split)
    }

    #[test]
    fn history_reads_zero_before_start() {
        let mut h = History::new(3, 2);
        assert_eq!(h.entry(0), &Vector::zeros(2));
        h.push(Vector::from_vec(vec![1.0, 2.0]));
        h.push(Vector::from_vec(vec![3.0, 4.0]));
        assert_eq!(h.entry(0)[0], 3.0);
        assert_eq!(h.entry(1)[0], 1.0);
        assert_eq!(h.entry(2), &Vector::zeros(2));
        for i in 0..5 {
            h.push(Vector::from_element(2, i as f64));
        }
        assert_eq!(h.entry(2)[0], 2.0);
        assert_eq!(h.entry(3), &Vector::zeros(2));
    }

    #[test]
    fn zero_model_evaluates_to_zero() {
        let m = ModelForm::new(2, 3);
        let mut h = History::new(2, 3);
        h.push(Vector::from_element(3, 5.0));
        assert_eq!(m.eval(&h, &h).unwrap(), Vector::zeros(2));
    }

    #[test]
    fn cancelling_scalar_model() {
        let m = ModelForm::new(1, 1)
            .with_phi(0, s(1.0))
            .unwrap()
            .with_psi(0, s(-1.0))
            .unwrap();
        let mut h = History::new(1, 1);
        h.push(Vector::from_element(1, 2.5));
        assert_eq!(m.eval(&h, &h).unwrap()[0], 0.0);
    }

    #[test]
    fn model_rejects_wrong_shapes() {
        assert!(ModelForm::new(1, 2).with_phi(0, s(1.0)).is_err());
        let m = ModelForm::new(1, 1);
        let h = History::new(1, 2);
        assert!(m.eval(&h, &h).is_err());
    }

    #[test]
    fn zero_lead_is_rejected() {
        let split = LinkSplit::coordinate(1, 1);
        let m = ModelForm::new(1, 2)
            .with_phi(0, Mat::from_row_slice(1, 2, &[1.0, 0.0]))
            .unwrap();
        assert!(matches!(
            m.lead_inverse(&split),
            Err(TlmError::NonInvertibleLeadCoefficient { .. })
        ));
    }

    #[test]
    fn scalar_recursion_with_constant_perturbation_is_geometric() {
        let (m, split) = scalar_model(2.0, 0.5, 0.3);
        let c = 1.7;
        let j: Vec<Vector> = (0..30).map(|_| Vector::from_element(1, c)).collect();
        let d = deflection_sequence(&m, &split, &j).unwrap();
        // D_t = (c - r D_(t-1)) / phi0 with r = phi1 + psi0
        let (p0, r) = (2.0, 0.8);
        let q = -r / p0;
        for (t, dt) in d.iter().enumerate() {
            let closed = c / p0 * (1.0 - q.powi(t as i32 + 1)) / (1.0 - q);
            assert!((dt[0] - closed).abs() < 1e-14, "t = {t}");
        }
    }

    #[test]
    fn both_index_spellings_agree() {
        let split = LinkSplit::coordinate(2, 2);
        let mk = |seed: f64| Mat::from_fn(2, 4, |r, c| ((r * 4 + c) as f64 * seed).sin());
        let mut phi0 = mk(0.7);
        phi0[(0, 2)] = 2.0;
        phi0[(1, 3)] = 2.0;
        let m = ModelForm::new(2, 4)
            .with_phi(0, phi0)
            .unwrap()
            .with_phi(1, mk(1.3))
            .unwrap()
            .with_phi(2, mk(0.4))
            .unwrap()
            .with_psi(0, mk(2.1))
            .unwrap()
            .with_psi(1, mk(0.9))
            .unwrap();
        let j: Vec<Vector> = (0..25)
            .map(|t| Vector::from_vec(vec![(t as f64).cos(), (0.5 * t as f64).sin()]))
            .collect();
        let d = deflection_sequence(&m, &split, &j).unwrap();

        // update-order spelling: D(t+1) = I(t+1) - G^+ sum_mu (psi_mu + phi_(mu+1)) E_out D(t - mu)
        let g = m.lead_inverse(&split).unwrap();
        let mut alt: Vec<Vector> = vec![&g * &j[0]];
        for t in 0..j.len() - 1 {
            let mut acc = Vector::zeros(2);
            for mu in 0..=m.order() {
                if mu > t {
                    break;
                }
                acc += (m.psi(mu) + m.phi(mu + 1)) * &split.embed_out * &alt[t - mu];
            }
            alt.push(&g * &j[t + 1] - &g * acc);
        }
        for (a, b) in d.iter().zip(&alt) {
            assert!((a - b).amax() < 1e-13);
        }
    }

    fn sample_system(pert: Box<dyn Perturbation>) -> DeflectedSystem {
        let (m, split) = scalar_model(2.0, 0.5, 0.3);
        let base = realize_first_order(&m, &split, 1.0).unwrap();
        DeflectedSystem::new(base, split, m, pert).unwrap()
    }

    #[test]
    fn realization_satisfies_its_model() {
        let mut sys = sample_system(Box::new(ZeroPerturbation { image_dim: 1 }));
        let r = verify_deflection(
            &mut sys,
            |t| Vector::from_element(1, (0.37 * t as f64).sin() + 0.2),
            200,
            1e-12,
        )
        .unwrap();
        assert!(r.within_tol, "residual {}", r.max_residual);
    }

    #[test]
    fn zero_perturbation_matches_base_steps() {
        let mut sys = sample_system(Box::new(ZeroPerturbation { image_dim: 1 }));
        let base = sys.base().clone();
        let mut stub = base.zero_stub();
        for t in 0..50 {
            let z = Vector::from_element(1, (t as f64 * 0.9).cos());
            let got = sys.step(&z).unwrap();
            let (expect, next) = base.scatter_step(&z, &stub).unwrap();
            stub = next;
            assert_eq!(got, expect);
            assert_eq!(sys.deflection_history().entry(0), &Vector::zeros(1));
        }
    }

    #[test]
    fn impulse_response_is_base_plus_deflection() {
        let c = Vector::from_element(1, 0.6);
        let mut sys = sample_system(Box::new(LinearPerturbation::constant(c.clone())));
        let base = sys.base().clone();
        let (m, split) = scalar_model(2.0, 0.5, 0.3);
        let n = 20;
        let j: Vec<Vector> = (0..n).map(|_| c.clone()).collect();
        let d = deflection_sequence(&m, &split, &j).unwrap();
        let base_resp = base
            .impulse_response(&Vector::from_element(1, 1.0), n)
            .unwrap();
        for t in 0..n {
            let z = Vector::from_element(1, if t == 0 { 1.0 } else { 0.0 });
            let out = sys.step(&z).unwrap();
            assert!((out[0] - base_resp[t][0] - d[t][0]).abs() < 1e-14);
        }
    }

    #[test]
    fn random_linear_perturbation_satisfies_equation() {
        let mut node = BTreeMap::new();
        node.insert(0, Mat::from_row_slice(1, 2, &[0.2, -0.1]));
        node.insert(1, Mat::from_row_slice(1, 2, &[0.05, 0.07]));
        let mut port = BTreeMap::new();
        port.insert(0, Mat::from_row_slice(1, 2, &[0.3, 0.1]));
        let pert = LinearPerturbation {
            node,
            port,
            constant: Vector::from_element(1, 0.1),
        };
        let mut sys = sample_system(Box::new(pert));
        let r = verify_deflection(
            &mut sys,
            |t| Vector::from_element(1, (t as f64 * 0.21).sin()),
            200,
            1e-10,
        )
        .unwrap();
        assert!(r.within_tol, "residual {}", r.max_residual);
    }

    #[test]
    fn realization_with_psi1_satisfies_model() {
        let split = LinkSplit::coordinate(2, 2);
        let mk = |seed: f64| Mat::from_fn(2, 4, |r, c| 0.2 * ((r * 4 + c) as f64 * seed).sin());
        let mut phi0 = mk(0.3);
        phi0[(0, 2)] = 1.5;
        phi0[(1, 3)] = 1.5;
        let m = ModelForm::new(2, 4)
            .with_phi(0, phi0)
            .unwrap()
            .with_phi(1, mk(0.8))
            .unwrap()
            .with_psi(0, mk(1.7))
            .unwrap()
            .with_psi(1, mk(2.3))
            .unwrap();
        let base = realize_first_order(&m, &split, 1.0).unwrap();
        assert_eq!(base.n_stub(), 4);
        let mut sys =
            DeflectedSystem::new(base, split, m, Box::new(ZeroPerturbation { image_dim: 2 }))
                .unwrap();
        let r = verify_deflection(
            &mut sys,
            |t| Vector::from_vec(vec![(t as f64).sin(), (t as f64 * 0.3).cos()]),
            100,
            1e-12,
        )
        .unwrap();
        assert!(r.within_tol, "residual {}", r.max_residual);
    }

    #[test]
    fn higher_order_model_cannot_be_realized() {
        let split = LinkSplit::coordinate(1, 1);
        let m = ModelForm::new(1, 2)
            .with_phi(0, Mat::from_row_slice(1, 2, &[0.0, 1.0]))
            .unwrap()
            .with_phi(2, Mat::from_row_slice(1, 2, &[0.0, 1.0]))
            .unwrap();
        assert!(matches!(
            realize_first_order(&m, &split, 1.0),
            Err(TlmError::InvalidModelForm(_))
        ));
    }

    #[test]
    fn identical_systems_are_bitwise_identical() {
        let run = || {
            let mut sys = sample_system(Box::new(LinearPerturbation::constant(
                Vector::from_element(1, 0.25),
            )));
            (0..40)
                .map(|t| {
                    sys.step(&Vector::from_element(1, (t as f64).sin()))
                        .unwrap()[0]
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
