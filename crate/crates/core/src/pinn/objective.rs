//! The weighted five-term loss over fixed point sets, evaluated with the
//! batched jet networks, and its parameter gradient.

use alloc::vec;
use alloc::vec::Vec;

use super::residual::{
    boundary_traction, interior_adjoint, interior_residual, traction_adjoint, BoundaryJets,
    InteriorJets,
};
use super::{CollocationSets, DirichletRecord, LossBreakdown, LossWeights, NeumannRecord, PinnError};
use crate::mechanics::{ModulusField, Point2};
use crate::nets::batch::{JetBatch, JetOrder};
use crate::nets::{MlpConfig, NetworkParams};

/// Where the modulus comes from.
pub enum ModulusSource<'a> {
    /// Trained jointly with the displacement network.
    Network,
    /// Fixed to a known field; the modulus network is ignored (forward mode).
    Frozen(&'a dyn ModulusField),
}

/// Frozen modulus samples: values and gradients at the interior points,
/// values at the Neumann points.
struct FrozenModulus {
    interior: Vec<[f64; 3]>,
    neumann: Vec<f64>,
}

/// Loss evaluator with cached activation buffers for every point set.
pub struct Objective {
    weights: LossWeights,
    u_config: MlpConfig,
    mu_config: MlpConfig,
    interior_u: JetBatch,
    interior_mu: JetBatch,
    neumann_u: JetBatch,
    neumann_mu: JetBatch,
    dirichlet_u: JetBatch,
    data_u: JetBatch,
    dirichlet: Vec<DirichletRecord>,
    neumann: Vec<NeumannRecord>,
    measurements: Vec<[f64; 2]>,
    frozen: Option<FrozenModulus>,
    adj_u: [Vec<f64>; 4],
    adj_mu: [Vec<f64>; 2],
}

const INTERIOR: usize = 0;
const NEUMANN: usize = 1;
const DIRICHLET: usize = 2;
const DATA: usize = 3;

fn finite(v: f64, term: &'static str) -> Result<f64, PinnError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(PinnError::NonFinite { term })
    }
}

fn check_all(v: &[f64], term: &'static str) -> Result<(), PinnError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(PinnError::NonFinite { term })
    }
}

impl Objective {
    pub fn new(
        sets: &CollocationSets,
        weights: LossWeights,
        modulus: ModulusSource<'_>,
        u_config: MlpConfig,
        mu_config: MlpConfig,
    ) -> Result<Self, PinnError> {
        weights.validate()?;
        if u_config.output_width != 3 || mu_config.output_width != 1 {
            return Err(PinnError::Config("networks must output (u1, u2, p) and mu"));
        }
        let enabled = |w: f64, n: usize, what| {
            if w > 0.0 && n == 0 {
                Err(PinnError::Config(what))
            } else {
                Ok(())
            }
        };
        enabled(weights.w_f, sets.interior.len(), "no interior points")?;
        enabled(weights.w_d, sets.dirichlet.len(), "no Dirichlet points")?;
        enabled(weights.w_t, sets.neumann.len(), "no Neumann points")?;
        let measurements = if weights.w_u > 0.0 {
            enabled(weights.w_u, sets.data_points.len(), "no data points")?;
            sets.measurements
                .clone()
                .ok_or(PinnError::Config("data term enabled but no measurements attached"))?
        } else {
            Vec::new()
        };
        let data_points: &[Point2] = if weights.w_u > 0.0 { &sets.data_points } else { &[] };
        let dirichlet_points: Vec<Point2> = sets.dirichlet.iter().map(|r| r.at).collect();
        let neumann_points: Vec<Point2> = sets.neumann.iter().map(|r| r.at).collect();
        for r in &sets.neumann {
            crate::mechanics::check_unit(r.normal)?;
        }
        let frozen = match modulus {
            ModulusSource::Network => None,
            ModulusSource::Frozen(field) => Some(FrozenModulus {
                interior: sets
                    .interior
                    .iter()
                    .map(|&x| {
                        let g = field.gradient(x);
                        [field.value(x), g[0], g[1]]
                    })
                    .collect(),
                neumann: neumann_points.iter().map(|&x| field.value(x)).collect(),
            }),
        };
        let mu_pts = |pts: &[Point2]| -> Vec<Point2> {
            if frozen.is_some() {
                Vec::new()
            } else {
                pts.to_vec()
            }
        };
        let interior_u = JetBatch::new(u_config, &sets.interior, JetOrder::Second)?;
        let interior_mu = JetBatch::new(mu_config, &mu_pts(&sets.interior), JetOrder::First)?;
        let neumann_u = JetBatch::new(u_config, &neumann_points, JetOrder::First)?;
        let neumann_mu = JetBatch::new(mu_config, &mu_pts(&neumann_points), JetOrder::Value)?;
        let dirichlet_u = JetBatch::new(u_config, &dirichlet_points, JetOrder::Value)?;
        let data_u = JetBatch::new(u_config, data_points, JetOrder::Value)?;
        let adj_u = [
            vec![0.0; interior_u.outputs().len()],
            vec![0.0; neumann_u.outputs().len()],
            vec![0.0; dirichlet_u.outputs().len()],
            vec![0.0; data_u.outputs().len()],
        ];
        let adj_mu = [
            vec![0.0; interior_mu.outputs().len()],
            vec![0.0; neumann_mu.outputs().len()],
        ];
        Ok(Objective {
            weights,
            u_config,
            mu_config,
            interior_u,
            interior_mu,
            neumann_u,
            neumann_mu,
            dirichlet_u,
            data_u,
            dirichlet: sets.dirichlet.clone(),
            neumann: sets.neumann.clone(),
            measurements,
            frozen,
            adj_u,
            adj_mu,
        })
    }

    pub fn weights(&self) -> LossWeights {
        self.weights
    }

    /// Whether the modulus network takes part in the loss.
    pub fn trains_modulus(&self) -> bool {
        self.frozen.is_none()
    }

    fn check_params(&self, u: &NetworkParams, mu: &NetworkParams) -> Result<(), PinnError> {
        if *u.config() != self.u_config || *mu.config() != self.mu_config {
            return Err(PinnError::Config("parameters do not match the objective's networks"));
        }
        Ok(())
    }

    fn forward(&mut self, u: &NetworkParams, mu: &NetworkParams) -> Result<(), PinnError> {
        self.check_params(u, mu)?;
        self.interior_u.forward(u)?;
        self.neumann_u.forward(u)?;
        self.dirichlet_u.forward(u)?;
        self.data_u.forward(u)?;
        if self.frozen.is_none() {
            self.interior_mu.forward(mu)?;
            self.neumann_mu.forward(mu)?;
        }
        Ok(())
    }

    fn interior_jets(&self, q: usize) -> InteriorJets<f64> {
        let b = &self.interior_u;
        let mu = match &self.frozen {
            Some(f) => f.interior[q],
            None => core::array::from_fn(|c| self.interior_mu.output(0, q, c)),
        };
        InteriorJets {
            u1: core::array::from_fn(|c| b.output(0, q, c)),
            u2: core::array::from_fn(|c| b.output(1, q, c)),
            p: core::array::from_fn(|c| b.output(2, q, c)),
            mu,
        }
    }

    fn boundary_jets(&self, q: usize) -> BoundaryJets<f64> {
        let b = &self.neumann_u;
        BoundaryJets {
            u1: core::array::from_fn(|c| b.output(0, q, c)),
            u2: core::array::from_fn(|c| b.output(1, q, c)),
            p: b.output(2, q, 0),
            mu: match &self.frozen {
                Some(f) => f.neumann[q],
                None => self.neumann_mu.output(0, q, 0),
            },
        }
    }

    /// Evaluates the loss; with `grad`, also its gradient with respect to
    /// both parameter vectors (overwritten, not accumulated). The modulus
    /// gradient is zero when the modulus is frozen.
    fn evaluate(
        &mut self,
        u: &NetworkParams,
        mu: &NetworkParams,
        grad: Option<(&mut [f64], &mut [f64])>,
    ) -> Result<LossBreakdown, PinnError> {
        self.forward(u, mu)?;
        let want = grad.is_some();
        let w = self.weights;
        let mut out = LossBreakdown::default();

        // Interior: equilibrium and incompressibility.
        let n = self.interior_u.len();
        if w.w_f > 0.0 && n > 0 {
            let s = w.w_f / n as f64;
            let (mut pde, mut inc) = (0.0, 0.0);
            let nu = n * 6;
            for q in 0..n {
                let j = self.interior_jets(q);
                let r = interior_residual(&j)?;
                pde += r[0] * r[0] + r[1] * r[1];
                inc += r[2] * r[2];
                if want {
                    let a = interior_adjoint(&j, [2.0 * s * r[0], 2.0 * s * r[1], 2.0 * s * r[2]]);
                    let adj = &mut self.adj_u[INTERIOR];
                    for c in 0..6 {
                        adj[q * 6 + c] = a.u1[c];
                        adj[nu + q * 6 + c] = a.u2[c];
                    }
                    for c in 0..3 {
                        adj[2 * nu + q * 6 + c] = a.p[c];
                    }
                    if self.frozen.is_none() {
                        self.adj_mu[INTERIOR][q * 3..q * 3 + 3].copy_from_slice(&a.mu);
                    }
                }
            }
            out.pde = finite(s * pde, "pde")?;
            out.incompressibility = finite(s * inc, "incompressibility")?;
            if want {
                check_all(&self.adj_u[INTERIOR], "pde")?;
                check_all(&self.adj_mu[INTERIOR], "pde")?;
            }
        }

        // Neumann: traction mismatch.
        let n = self.neumann.len();
        if w.w_t > 0.0 && n > 0 {
            let s = w.w_t / n as f64;
            let mut acc = 0.0;
            for q in 0..n {
                let rec = self.neumann[q];
                let j = self.boundary_jets(q);
                let t = boundary_traction(&j, rec.normal)?;
                let d = [t[0] - rec.target[0], t[1] - rec.target[1]];
                acc += d[0] * d[0] + d[1] * d[1];
                if want {
                    let a = traction_adjoint(&j, rec.normal, [2.0 * s * d[0], 2.0 * s * d[1]]);
                    let adj = &mut self.adj_u[NEUMANN];
                    let m = n * 3;
                    for c in 0..3 {
                        adj[q * 3 + c] = a.u1[c];
                        adj[m + q * 3 + c] = a.u2[c];
                    }
                    adj[2 * m + q * 3] = a.p;
                    if self.frozen.is_none() {
                        self.adj_mu[NEUMANN][q] = a.mu;
                    }
                }
            }
            out.neumann = finite(s * acc, "neumann")?;
            if want {
                check_all(&self.adj_u[NEUMANN], "neumann")?;
                check_all(&self.adj_mu[NEUMANN], "neumann")?;
            }
        }

        // Dirichlet: masked displacement mismatch.
        let n = self.dirichlet.len();
        if w.w_d > 0.0 && n > 0 {
            let s = w.w_d / n as f64;
            let mut acc = 0.0;
            for q in 0..n {
                let rec = self.dirichlet[q];
                for i in 0..2 {
                    if rec.mask[i] {
                        let d = self.dirichlet_u.output(i, q, 0) - rec.target[i];
                        acc += d * d;
                        if want {
                            self.adj_u[DIRICHLET][i * n + q] = 2.0 * s * d;
                        }
                    }
                }
            }
            out.dirichlet = finite(s * acc, "dirichlet")?;
        }

        // Data.
        let n = self.measurements.len();
        if w.w_u > 0.0 && n > 0 {
            let s = w.w_u / n as f64;
            let mut acc = 0.0;
            for q in 0..n {
                for i in 0..2 {
                    let d = self.data_u.output(i, q, 0) - self.measurements[q][i];
                    acc += d * d;
                    if want {
                        self.adj_u[DATA][i * n + q] = 2.0 * s * d;
                    }
                }
            }
            out.data = finite(s * acc, "data")?;
        }

        if let Some((gu, gmu)) = grad {
            if gu.len() != u.len() || gmu.len() != mu.len() {
                return Err(PinnError::Shape {
                    what: "gradient",
                    expected: u.len() + mu.len(),
                    got: gu.len() + gmu.len(),
                });
            }
            gu.fill(0.0);
            gmu.fill(0.0);
            let terms = ["pde", "neumann", "dirichlet", "data"];
            let batches = [
                &mut self.interior_u,
                &mut self.neumann_u,
                &mut self.dirichlet_u,
                &mut self.data_u,
            ];
            let active = [w.w_f > 0.0, w.w_t > 0.0, w.w_d > 0.0, w.w_u > 0.0];
            for (k, b) in batches.into_iter().enumerate() {
                if active[k] && !b.is_empty() {
                    b.backward(u, &self.adj_u[k], gu)?;
                    check_all(gu, terms[k])?;
                }
            }
            if self.frozen.is_none() {
                let batches = [&mut self.interior_mu, &mut self.neumann_mu];
                let active = [w.w_f > 0.0, w.w_t > 0.0];
                for (k, b) in batches.into_iter().enumerate() {
                    if active[k] && !b.is_empty() {
                        b.backward(mu, &self.adj_mu[k], gmu)?;
                        check_all(gmu, terms[k])?;
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn loss(&mut self, u: &NetworkParams, mu: &NetworkParams) -> Result<LossBreakdown, PinnError> {
        self.evaluate(u, mu, None)
    }

    pub fn loss_and_gradient(
        &mut self,
        u: &NetworkParams,
        mu: &NetworkParams,
        grad_u: &mut [f64],
        grad_mu: &mut [f64],
    ) -> Result<LossBreakdown, PinnError> {
        self.evaluate(u, mu, Some((grad_u, grad_mu)))
    }
}

/// Closed-form fields evaluated pointwise, for checking the loss against
/// manufactured solutions without networks.
pub trait FieldJets {
    fn interior(&self, x: Point2) -> InteriorJets<f64>;
    fn boundary(&self, x: Point2) -> BoundaryJets<f64>;
    fn displacement(&self, x: Point2) -> [f64; 2];
}

/// The same five terms as [`Objective`], for fields given in closed form.
pub fn field_loss(
    sets: &CollocationSets,
    w: LossWeights,
    fields: &dyn FieldJets,
) -> Result<LossBreakdown, PinnError> {
    w.validate()?;
    let mean = |n: usize| if n == 0 { 0.0 } else { 1.0 / n as f64 };
    let mut out = LossBreakdown::default();
    let s = w.w_f * mean(sets.interior.len());
    for &x in &sets.interior {
        let r = interior_residual(&fields.interior(x))?;
        out.pde += s * (r[0] * r[0] + r[1] * r[1]);
        out.incompressibility += s * r[2] * r[2];
    }
    let s = w.w_t * mean(sets.neumann.len());
    for rec in &sets.neumann {
        let t = boundary_traction(&fields.boundary(rec.at), rec.normal)?;
        out.neumann += s * (sq(t[0] - rec.target[0]) + sq(t[1] - rec.target[1]));
    }
    let s = w.w_d * mean(sets.dirichlet.len());
    for rec in &sets.dirichlet {
        let u = fields.displacement(rec.at);
        for i in 0..2 {
            if rec.mask[i] {
                out.dirichlet += s * sq(u[i] - rec.target[i]);
            }
        }
    }
    if w.w_u > 0.0 {
        let meas = sets
            .measurements
            .as_ref()
            .ok_or(PinnError::Config("data term enabled but no measurements attached"))?;
        let s = w.w_u * mean(meas.len());
        for (x, m) in sets.data_points.iter().zip(meas) {
            let u = fields.displacement(*x);
            out.data += s * (sq(u[0] - m[0]) + sq(u[1] - m[1]));
        }
    }
    for (name, v) in LossBreakdown::TERM_NAMES.iter().zip(out.terms()) {
        finite(v, *name)?;
    }
    Ok(out)
}

#[inline]
fn sq(x: f64) -> f64 {
    x * x
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::autodiff::{Tape, Var};
    use crate::mechanics::{deformation_gradient, first_pk_stress, traction, ConstantModulus, Mat2};
    use crate::nets::forward_generic;
    use crate::pinn::residual::pde_residual_graph;
    use crate::pinn::{build_collocation, ProblemSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn small_configs() -> (MlpConfig, MlpConfig) {
        let mut cu = MlpConfig::displacement();
        cu.hidden_layers = 2;
        cu.hidden_width = 5;
        let mut cm = MlpConfig::modulus();
        cm.hidden_layers = 2;
        cm.hidden_width = 4;
        (cu, cm)
    }

    pub(crate) fn small_problem(seed: u64) -> CollocationSets {
        let mut spec = ProblemSpec::tension(0.3);
        spec.interior_per_side = 4;
        spec.points_per_edge = 3;
        spec.measurement_per_side = 3;
        let mut s = build_collocation(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rec: Vec<_> = s
            .data_points
            .iter()
            .map(|p| (*p, [rng.gen_range(0.0..0.2), rng.gen_range(-0.1..0.0)]))
            .collect();
        s.attach_measurements(&rec).unwrap();
        s
    }

    pub(crate) fn perturbed(config: MlpConfig, seed: u64) -> NetworkParams {
        let mut p = NetworkParams::init_xavier(config, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        for v in p.values_mut() {
            *v += rng.gen_range(-0.2..0.2);
        }
        p
    }

    /// The loss built entirely on the tape from the generic network forward.
    pub(crate) fn tape_loss<'t>(
        tape: &'t Tape,
        sets: &CollocationSets,
        w: LossWeights,
        u: &NetworkParams,
        up: &[Var<'t>],
        mu: &NetworkParams,
        mp: &[Var<'t>],
    ) -> [Var<'t>; 5] {
        let zero = tape.constant(0.0);
        let mut terms = [zero; 5];
        let nf = sets.interior.len() as f64;
        for &x in &sets.interior {
            let r = pde_residual_graph(tape, u, up, mu, mp, x).unwrap();
            terms[1] = terms[1] + (r[0] * r[0] + r[1] * r[1]) * (w.w_f / nf);
            terms[2] = terms[2] + r[2] * r[2] * (w.w_f / nf);
        }
        let nt = sets.neumann.len() as f64;
        for r in &sets.neumann {
            let xs = [tape.leaf(r.at.x1), tape.leaf(r.at.x2)];
            let o = forward_generic(u.config(), up, &xs).unwrap();
            let m = forward_generic(mu.config(), mp, &xs).unwrap()[0];
            let g1 = o[0].grad_graph(&xs).unwrap();
            let g2 = o[1].grad_graph(&xs).unwrap();
            let f = deformation_gradient(Mat2::new(g1[0], g1[1], g2[0], g2[1]));
            let t = traction(&first_pk_stress(&f, o[2], m).unwrap(), r.normal).unwrap();
            let d0 = t[0] - r.target[0];
            let d1 = t[1] - r.target[1];
            terms[4] = terms[4] + (d0 * d0 + d1 * d1) * (w.w_t / nt);
        }
        let nd = sets.dirichlet.len() as f64;
        for r in &sets.dirichlet {
            let xs = [tape.constant(r.at.x1), tape.constant(r.at.x2)];
            let o = forward_generic(u.config(), up, &xs).unwrap();
            for i in 0..2 {
                if r.mask[i] {
                    let d = o[i] - r.target[i];
                    terms[3] = terms[3] + d * d * (w.w_d / nd);
                }
            }
        }
        let meas = sets.measurements.as_ref().unwrap();
        let nu = meas.len() as f64;
        for (x, m) in sets.data_points.iter().zip(meas) {
            let xs = [tape.constant(x.x1), tape.constant(x.x2)];
            let o = forward_generic(u.config(), up, &xs).unwrap();
            for i in 0..2 {
                let d = o[i] - m[i];
                terms[0] = terms[0] + d * d * (w.w_u / nu);
            }
        }
        terms
    }

    #[test]
    fn matches_tape_reference() {
        let (cu, cm) = small_configs();
        let sets = small_problem(1);
        let u = perturbed(cu, 2);
        let mu = perturbed(cm, 3);
        let w = LossWeights::default();
        let mut obj = Objective::new(&sets, w, ModulusSource::Network, cu, cm).unwrap();
        let mut gu = vec![0.0; u.len()];
        let mut gm = vec![0.0; mu.len()];
        let b = obj.loss_and_gradient(&u, &mu, &mut gu, &mut gm).unwrap();

        let tape = Tape::new();
        let up = tape.leaves(u.values());
        let mp = tape.leaves(mu.values());
        let t = tape_loss(&tape, &sets, w, &u, &up, &mu, &mp);
        for (k, (a, r)) in b.terms().iter().zip(&t).enumerate() {
            assert!((a - r.value()).abs() < 1e-12 * (1.0 + r.value().abs()), "term {k}");
        }
        let total = t[0] + t[1] + t[2] + t[3] + t[4];
        let all: Vec<Var> = up.iter().chain(&mp).copied().collect();
        let g = total.grad(&all).unwrap();
        let mut worst: f64 = 0.0;
        for (a, r) in gu.iter().chain(&gm).zip(g.as_slice()) {
            worst = worst.max((a - r).abs() / (1.0 + r.abs()));
        }
        assert!(worst < 1e-11, "{worst:e}");
    }

    #[test]
    fn frozen_modulus_matches_constant_network() {
        // A modulus network with zero weights outputs its last bias exactly.
        let (cu, cm) = small_configs();
        let sets = small_problem(4);
        let u = perturbed(cu, 5);
        let mut mu = NetworkParams::zeros(cm).unwrap();
        let last = cm.bias_range(cm.layer_count() - 1).start;
        mu.values_mut()[last] = 0.27;
        let w = LossWeights::default();
        let mut a = Objective::new(&sets, w, ModulusSource::Network, cu, cm).unwrap();
        let field = ConstantModulus(0.27);
        let mut b = Objective::new(&sets, w, ModulusSource::Frozen(&field), cu, cm).unwrap();
        let mut g1 = vec![0.0; u.len()];
        let mut g2 = vec![0.0; u.len()];
        let mut gm = vec![0.0; mu.len()];
        let la = a.loss_and_gradient(&u, &mu, &mut g1, &mut gm).unwrap();
        let lb = b.loss_and_gradient(&u, &mu, &mut g2, &mut gm).unwrap();
        assert!((la.total() - lb.total()).abs() < 1e-14);
        assert!(gm.iter().all(|&v| v == 0.0));
        for (x, y) in g1.iter().zip(&g2) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn single_data_point() {
        let (cu, cm) = small_configs();
        let u = perturbed(cu, 1);
        let mu = perturbed(cm, 2);
        let x = Point2::new(0.4, 0.6);
        let v = u.forward(&[x.x1, x.x2]).unwrap();
        let sets = CollocationSets {
            interior: vec![],
            dirichlet: vec![],
            neumann: vec![],
            data_points: vec![x],
            measurements: Some(vec![[v[0] - 0.1, v[1]]]),
        };
        let w = LossWeights {
            w_u: 10.0,
            w_f: 0.0,
            w_d: 0.0,
            w_t: 0.0,
        };
        let mut obj = Objective::new(&sets, w, ModulusSource::Network, cu, cm).unwrap();
        let b = obj.loss(&u, &mu).unwrap();
        assert!((b.data - 0.1).abs() < 1e-14);
        assert_eq!(b.total(), b.data);
    }

    #[test]
    fn enabled_terms_need_points() {
        let (cu, cm) = small_configs();
        let mut sets = small_problem(1);
        sets.neumann.clear();
        let w = LossWeights::default();
        assert!(Objective::new(&sets, w, ModulusSource::Network, cu, cm).is_err());
        let w0 = LossWeights { w_t: 0.0, ..w };
        assert!(Objective::new(&sets, w0, ModulusSource::Network, cu, cm).is_ok());
        sets.measurements = None;
        assert!(Objective::new(&sets, w0, ModulusSource::Network, cu, cm).is_err());
        let w1 = LossWeights { w_u: 0.0, ..w0 };
        assert!(Objective::new(&sets, w1, ModulusSource::Network, cu, cm).is_ok());
    }

    #[test]
    fn weights_scale_terms() {
        let (cu, cm) = small_configs();
        let sets = small_problem(7);
        let u = perturbed(cu, 8);
        let mu = perturbed(cm, 9);
        let zero = LossWeights {
            w_u: 0.0,
            w_f: 0.0,
            w_d: 0.0,
            w_t: 0.0,
        };
        let mut o = Objective::new(&sets, zero, ModulusSource::Network, cu, cm).unwrap();
        assert_eq!(o.loss(&u, &mu).unwrap().total(), 0.0);
        let w = LossWeights::default();
        let b1 = Objective::new(&sets, w, ModulusSource::Network, cu, cm)
            .unwrap()
            .loss(&u, &mu)
            .unwrap();
        let w2 = LossWeights { w_u: 2.0 * w.w_u, ..w };
        let b2 = Objective::new(&sets, w2, ModulusSource::Network, cu, cm)
            .unwrap()
            .loss(&u, &mu)
            .unwrap();
        assert!((b2.data - 2.0 * b1.data).abs() < 1e-15 * b1.data.max(1.0));
        assert_eq!(b2.pde, b1.pde);
        assert_eq!(b2.neumann, b1.neumann);
        for t in b1.terms() {
            assert!(t >= 0.0);
        }
    }

    #[test]
    fn permutation_invariant() {
        let (cu, cm) = small_configs();
        let sets = small_problem(3);
        let u = perturbed(cu, 4);
        let mu = perturbed(cm, 5);
        let w = LossWeights::default();
        let a = Objective::new(&sets, w, ModulusSource::Network, cu, cm)
            .unwrap()
            .loss(&u, &mu)
            .unwrap();
        let mut p = sets.clone();
        p.interior.reverse();
        p.neumann.rotate_left(3);
        p.dirichlet.reverse();
        p.data_points.reverse();
        p.measurements.as_mut().unwrap().reverse();
        let b = Objective::new(&p, w, ModulusSource::Network, cu, cm)
            .unwrap()
            .loss(&u, &mu)
            .unwrap();
        for (x, y) in a.terms().iter().zip(b.terms()) {
            assert!((x - y).abs() <= 1e-14 * x.abs().max(1e-300));
        }
    }

    struct Uniaxial {
        lambda: f64,
        mu: f64,
    }

    impl FieldJets for Uniaxial {
        fn interior(&self, x: Point2) -> InteriorJets<f64> {
            let l = self.lambda;
            InteriorJets {
                u1: [(l - 1.0) * x.x1, l - 1.0, 0.0, 0.0, 0.0, 0.0],
                u2: [(1.0 / l - 1.0) * x.x2, 0.0, 1.0 / l - 1.0, 0.0, 0.0, 0.0],
                p: [self.mu / (l * l), 0.0, 0.0],
                mu: [self.mu, 0.0, 0.0],
            }
        }
        fn boundary(&self, x: Point2) -> BoundaryJets<f64> {
            let j = self.interior(x);
            BoundaryJets {
                u1: [j.u1[0], j.u1[1], j.u1[2]],
                u2: [j.u2[0], j.u2[1], j.u2[2]],
                p: j.p[0],
                mu: j.mu[0],
            }
        }
        fn displacement(&self, x: Point2) -> [f64; 2] {
            let j = self.interior(x);
            [j.u1[0], j.u2[0]]
        }
    }

    #[test]
    fn uniaxial_fields_have_zero_loss() {
        let (mu, p0) = (0.3, 0.3);
        let lambda = crate::femsolve::analytic_uniaxial(mu, p0);
        let f = Uniaxial { lambda, mu };
        let mut sets = build_collocation(&ProblemSpec::tension(p0)).unwrap();
        let rec: Vec<_> = sets.data_points.iter().map(|&x| (x, f.displacement(x))).collect();
        sets.attach_measurements(&rec).unwrap();
        let b = field_loss(&sets, LossWeights::default(), &f).unwrap();
        assert!(b.total() < 1e-20, "{:e}", b.total());
        // A wrong stretch is visible in the traction term.
        let g = Uniaxial { lambda: lambda * 1.01, mu };
        assert!(field_loss(&sets, LossWeights::default(), &g).unwrap().neumann > 1e-6);
    }

    #[test]
    fn non_finite_term_is_named() {
        let (cu, cm) = small_configs();
        let mut sets = small_problem(3);
        sets.measurements.as_mut().unwrap()[0][0] = f64::INFINITY;
        let u = perturbed(cu, 4);
        let mu = perturbed(cm, 5);
        let mut o = Objective::new(&sets, LossWeights::default(), ModulusSource::Network, cu, cm).unwrap();
        assert_eq!(o.loss(&u, &mu), Err(PinnError::NonFinite { term: "data" }));
    }
}
