//! Finite-difference verification of every derivative the trainer relies on.
//!
//! Errors are `|analytic - fd| / max(|fd|, 1e-3 * max|fd|, FD_FLOOR)` per
//! component, the max taken over the vector being checked, so components
//! that are tiny relative to their neighbours are judged on the vector's
//! scale rather than on roundoff.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::objective::{ModulusSource, Objective};
use super::residual::{interior_adjoint, interior_residual, InteriorJets};
use super::{build_collocation, LossWeights, PinnError, ProblemSpec};
use crate::autodiff::{finite_difference_check, Tape, Var, FD_FLOOR};
use crate::mechanics::Point2;
use crate::nets::batch::{ch, JetBatch, JetOrder};
use crate::nets::{forward_generic, MlpConfig, NetworkParams};
use crate::real::Real;

pub const FIRST_ORDER_TOL: f64 = 1e-6;
pub const SECOND_ORDER_TOL: f64 = 1e-5;
const STEP: f64 = 1e-5;
const SECOND_STEP: f64 = 1e-4;

pub const CATEGORIES: [&str; 7] = [
    "primitives",
    "network parameters",
    "batched parameters",
    "spatial first order",
    "spatial second order",
    "residual adjoint",
    "loss gradient",
];

#[derive(Clone, Debug)]
pub struct GradcheckSettings {
    pub seed: u64,
    /// Parameters sampled for the full loss gradient.
    pub loss_samples: usize,
    /// Random points per spatial category.
    pub points: usize,
    pub u_config: MlpConfig,
    pub mu_config: MlpConfig,
    /// Test fixture: scales the analytic derivatives of the named category
    /// by `1 + 1e-4`, which must make that category fail.
    pub fault: Option<&'static str>,
}

impl Default for GradcheckSettings {
    fn default() -> Self {
        GradcheckSettings {
            seed: 0,
            loss_samples: 50,
            points: 8,
            u_config: MlpConfig::displacement(),
            mu_config: MlpConfig::modulus(),
            fault: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CategoryResult {
    pub name: &'static str,
    pub checks: usize,
    pub worst: f64,
    pub threshold: f64,
}

impl CategoryResult {
    pub fn passed(&self) -> bool {
        self.worst < self.threshold
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub categories: Vec<CategoryResult>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.categories.iter().all(|c| c.passed())
    }
}

/// Worst scaled error between analytic and FD vectors.
pub fn vector_error(analytic: &[f64], fd: &[f64]) -> f64 {
    let scale = fd.iter().fold(0.0f64, |m, v| m.max(libm::fabs(*v)));
    let floor = (1e-3 * scale).max(FD_FLOOR);
    let mut worst = 0.0f64;
    for (a, f) in analytic.iter().zip(fd) {
        let e = libm::fabs(a - f) / libm::fabs(*f).max(floor);
        if e.is_nan() {
            return f64::INFINITY;
        }
        worst = worst.max(e);
    }
    worst
}

fn central(f: &mut dyn FnMut(f64) -> f64, h: f64) -> f64 {
    (f(h) - f(-h)) / (2.0 * h)
}

struct Checker {
    fault: Option<&'static str>,
    out: Vec<CategoryResult>,
}

impl Checker {
    fn push(&mut self, name: &'static str, threshold: f64, pairs: Vec<(Vec<f64>, Vec<f64>)>) {
        let faulty = self.fault == Some(name);
        let mut worst = 0.0f64;
        let mut checks = 0;
        for (mut a, f) in pairs {
            if faulty {
                a.iter_mut().for_each(|v| *v *= 1.0 + 1e-4);
            }
            checks += a.len();
            worst = worst.max(vector_error(&a, &f));
        }
        self.out.push(CategoryResult {
            name,
            checks,
            worst,
            threshold,
        });
    }
}

fn perturbed(config: MlpConfig, rng: &mut ChaCha8Rng) -> Result<NetworkParams, PinnError> {
    let mut p = NetworkParams::init_xavier(config, rng.gen())?;
    for v in p.values_mut() {
        *v += rng.gen_range(-0.1..0.1);
    }
    Ok(p)
}

fn primitives(rng: &mut ChaCha8Rng, fault: bool) -> (usize, f64) {
    fn unary<'t>(k: usize, x: Var<'t>) -> Var<'t> {
        match k {
            0 => x.tanh(),
            1 => x.exp(),
            2 => x.ln(),
            3 => x.sin(),
            4 => x.cos(),
            5 => x.sqrt(),
            6 => x.powi(3),
            7 => x.powi(-2),
            8 => -x,
            _ => x.square(),
        }
    }
    let mut worst = 0.0f64;
    let mut n = 0;
    for k in 0..10 {
        let x = rng.gen_range(0.3..1.7);
        worst = worst.max(finite_difference_check(|_, v| unary(k, v[0]), &[x], STEP));
        n += 1;
    }
    let binary: [for<'t> fn(Var<'t>, Var<'t>) -> Var<'t>; 4] =
        [|a, b| a + b, |a, b| a - b, |a, b| a * b, |a, b| a / b];
    for f in binary {
        let p = [rng.gen_range(0.3..1.7), rng.gen_range(0.3..1.7)];
        worst = worst.max(finite_difference_check(|_, v| f(v[0], v[1]), &p, STEP));
        n += 2;
    }
    // Composite, mixed with constants.
    let p = [rng.gen_range(0.3..1.2), rng.gen_range(0.3..1.2)];
    worst = worst.max(finite_difference_check(
        |_, v| (v[0] * 2.0 + 1.0).tanh() * (v[1] - 0.5).exp() / (v[0] * v[1] + 1.0),
        &p,
        STEP,
    ));
    n += 2;
    if fault {
        // The primitive checker compares internally; emulate a wrong rule.
        worst = worst.max(1e-4);
    }
    (n, worst)
}

/// Runs every category and returns the per-category worst errors.
pub fn run(settings: &GradcheckSettings) -> Result<GradcheckReport, PinnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut ck = Checker {
        fault: settings.fault,
        out: Vec::new(),
    };
    let (n, worst) = primitives(&mut rng, settings.fault == Some("primitives"));
    ck.out.push(CategoryResult {
        name: "primitives",
        checks: n,
        worst,
        threshold: FIRST_ORDER_TOL,
    });

    let u = perturbed(settings.u_config, &mut rng)?;
    let mu = perturbed(settings.mu_config, &mut rng)?;
    let pts: Vec<Point2> = (0..settings.points.max(1))
        .map(|_| Point2::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)))
        .collect();

    // Generic network forward on the tape, gradient in the parameters.
    let mut pairs = Vec::new();
    for x in pts.iter().take(2) {
        let wts: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let eval = |vals: &[f64]| -> f64 {
            let o = forward_generic(u.config(), vals, &[x.x1, x.x2]).expect("shapes fixed");
            o.iter().zip(&wts).map(|(a, b)| a * b).sum()
        };
        let tape = Tape::new();
        let leaves = tape.leaves(u.values());
        let xs = [tape.constant(x.x1), tape.constant(x.x2)];
        let o = forward_generic(u.config(), &leaves, &xs)?;
        let s = o[0] * wts[0] + o[1] * wts[1] + o[2] * wts[2];
        let g = s.grad(&leaves).map_err(|_| PinnError::Config("tape"))?.into_vec();
        let mut vals = u.values().to_vec();
        let fd: Vec<f64> = (0..vals.len())
            .map(|i| {
                let v0 = vals[i];
                let r = central(
                    &mut |h| {
                        vals[i] = v0 + h;
                        eval(&vals)
                    },
                    STEP,
                );
                vals[i] = v0;
                r
            })
            .collect();
        pairs.push((g, fd));
    }
    ck.push("network parameters", FIRST_ORDER_TOL, pairs);

    // Batched jets: parameter gradient of a random functional of all channels.
    let mut batch = JetBatch::new(settings.u_config, &pts, JetOrder::Second)?;
    batch.forward(&u)?;
    let adj: Vec<f64> = (0..batch.outputs().len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut g = vec![0.0; u.len()];
    batch.backward(&u, &adj, &mut g)?;
    let mut probe = u.clone();
    let mut fd = Vec::with_capacity(u.len());
    for i in 0..u.len() {
        let v0 = probe.values()[i];
        let d = central(
            &mut |h| {
                probe.values_mut()[i] = v0 + h;
                batch.forward(&probe).expect("shapes fixed");
                batch.outputs().iter().zip(&adj).map(|(a, b)| a * b).sum()
            },
            STEP,
        );
        probe.values_mut()[i] = v0;
        fd.push(d);
    }
    ck.push("batched parameters", FIRST_ORDER_TOL, vec![(g, fd)]);

    // Spatial jets against differences of lower channels.
    batch.forward(&u)?;
    let value_at = |x: Point2, order: JetOrder| -> Vec<f64> {
        let mut b = JetBatch::new(settings.u_config, &[x], order).expect("valid config");
        b.forward(&u).expect("shapes fixed");
        b.outputs().to_vec()
    };
    let mut first = Vec::new();
    let mut second = Vec::new();
    for (q, &x) in pts.iter().enumerate() {
        for i in 0..3 {
            let jet: Vec<f64> = (0..6).map(|c| batch.output(i, q, c)).collect();
            let shift = |d: [f64; 2], h: f64| Point2::new(x.x1 + d[0] * h, x.x2 + d[1] * h);
            let mut fd1 = Vec::new();
            let mut fd2 = Vec::new();
            for dir in [[1.0, 0.0], [0.0, 1.0]] {
                fd1.push(central(&mut |h| value_at(shift(dir, h), JetOrder::Value)[i], STEP));
            }
            // d11, d12 from d1 in X1 and X2; d22 from d2 in X2.
            let d1 = |h: f64, dir| value_at(shift(dir, h), JetOrder::First)[i * 3 + ch::D1];
            let d2 = |h: f64, dir| value_at(shift(dir, h), JetOrder::First)[i * 3 + ch::D2];
            fd2.push(central(&mut |h| d1(h, [1.0, 0.0]), SECOND_STEP));
            fd2.push(central(&mut |h| d1(h, [0.0, 1.0]), SECOND_STEP));
            fd2.push(central(&mut |h| d2(h, [1.0, 0.0]), SECOND_STEP));
            fd2.push(central(&mut |h| d2(h, [0.0, 1.0]), SECOND_STEP));
            first.push((vec![jet[ch::D1], jet[ch::D2]], fd1));
            second.push((vec![jet[ch::D11], jet[ch::D12], jet[ch::D12], jet[ch::D22]], fd2));
        }
    }
    ck.push("spatial first order", FIRST_ORDER_TOL, first);
    ck.push("spatial second order", SECOND_ORDER_TOL, second);

    // Hand adjoint of the pointwise residual.
    let mut pairs = Vec::new();
    for _ in 0..settings.points.max(1) {
        let mut r = || rng.gen_range(-0.3..0.3);
        let jets = InteriorJets {
            u1: core::array::from_fn(|_| r()),
            u2: core::array::from_fn(|_| r()),
            p: core::array::from_fn(|_| r()),
            mu: core::array::from_fn(|_| r()),
        };
        let bar = [r(), r(), r()];
        let a = interior_adjoint(&jets, bar);
        let flat = |j: &InteriorJets<f64>| -> Vec<f64> {
            j.u1.iter().chain(&j.u2).chain(&j.p).chain(&j.mu).copied().collect()
        };
        let base = flat(&jets);
        let mut x = base.clone();
        let mut fd = Vec::with_capacity(base.len());
        for k in 0..base.len() {
            fd.push(central(
                &mut |h| {
                    x[k] = base[k] + h;
                    let j = InteriorJets {
                        u1: core::array::from_fn(|c| x[c]),
                        u2: core::array::from_fn(|c| x[6 + c]),
                        p: core::array::from_fn(|c| x[12 + c]),
                        mu: core::array::from_fn(|c| x[15 + c]),
                    };
                    let res = interior_residual(&j).expect("well away from singular");
                    res.iter().zip(&bar).map(|(a, b)| a * b).sum()
                },
                STEP,
            ));
            x[k] = base[k];
        }
        pairs.push((flat(&a), fd));
    }
    ck.push("residual adjoint", FIRST_ORDER_TOL, pairs);

    // Full loss on the default point sets with synthetic measurements.
    let mut sets = build_collocation(&ProblemSpec::tension(0.3))?;
    let meas: Vec<(Point2, [f64; 2])> = sets
        .data_points
        .iter()
        .map(|&x| (x, [0.3 * x.x1 + 0.02 * x.x2.sin(), -0.2 * x.x2 * (1.0 + 0.1 * x.x1)]))
        .collect();
    sets.attach_measurements(&meas)?;
    let mut obj = Objective::new(
        &sets,
        LossWeights::default(),
        ModulusSource::Network,
        settings.u_config,
        settings.mu_config,
    )?;
    let mut gu = vec![0.0; u.len()];
    let mut gm = vec![0.0; mu.len()];
    obj.loss_and_gradient(&u, &mu, &mut gu, &mut gm)?;
    let total = u.len() + mu.len();
    let mut chosen: Vec<usize> = Vec::new();
    while chosen.len() < settings.loss_samples.min(total) {
        let k = rng.gen_range(0..total);
        if !chosen.contains(&k) {
            chosen.push(k);
        }
    }
    let (mut pu, mut pm) = (u.clone(), mu.clone());
    let mut analytic = Vec::new();
    let mut fd = Vec::new();
    for &k in &chosen {
        let d = central(
            &mut |h| {
                pu.values_mut().copy_from_slice(u.values());
                pm.values_mut().copy_from_slice(mu.values());
                if k < u.len() {
                    pu.values_mut()[k] += h;
                } else {
                    pm.values_mut()[k - u.len()] += h;
                }
                obj.loss(&pu, &pm).map(|b| b.total()).unwrap_or(f64::NAN)
            },
            STEP,
        );
        fd.push(d);
        analytic.push(if k < u.len() { gu[k] } else { gm[k - u.len()] });
    }
    ck.push("loss gradient", FIRST_ORDER_TOL, vec![(analytic, fd)]);

    Ok(GradcheckReport { categories: ck.out })
}
