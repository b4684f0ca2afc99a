use alloc::vec;
use alloc::vec::Vec;

use super::assembly::Discretization;
use super::element::{q1, q2, quadrature_table};
use super::mesh::StructuredMesh;
use super::FemError;
use crate::mechanics::Point2;

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonSettings {
    pub load_steps: usize,
    pub max_iterations: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub line_search: bool,
    pub max_halvings: usize,
    /// On a failed increment, first try to jump past the trouble with two
    /// and three full load steps before halving. Heterogeneous fields can
    /// put an isolated critical point on the loading path, where halving
    /// only walks into the singularity.
    pub step_over: bool,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        NewtonSettings {
            load_steps: 10,
            max_iterations: 25,
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            line_search: true,
            max_halvings: 4,
            step_over: true,
        }
    }
}

impl NewtonSettings {
    pub fn validate(&self) -> Result<(), FemError> {
        if self.load_steps == 0 || self.max_iterations == 0 {
            return Err(FemError::Settings("step and iteration counts must be positive"));
        }
        if self.load_steps > 1 << 20 {
            return Err(FemError::Settings("too many load steps"));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(FemError::Settings("relative tolerance must lie in (0, 1)"));
        }
        if !(self.abs_tol > 0.0) {
            return Err(FemError::Settings("absolute tolerance must be positive"));
        }
        Ok(())
    }
}

/// One accepted load increment.
#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub load: f64,
    pub iterations: usize,
    /// Residual norm before the first and after every Newton update.
    pub residual_norms: Vec<f64>,
}

impl StepReport {
    pub fn final_residual(&self) -> f64 {
        *self.residual_norms.last().unwrap_or(&0.0)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceReport {
    pub steps: Vec<StepReport>,
    /// Number of times a load increment was halved.
    pub halvings: usize,
    /// Loads reached by jumping past a failed increment.
    pub step_overs: Vec<f64>,
}

impl ConvergenceReport {
    pub fn total_iterations(&self) -> usize {
        self.steps.iter().map(|s| s.iterations).sum()
    }
}

/// Converged nodal solution.
#[derive(Clone, Debug)]
pub struct FemSolution {
    mesh: StructuredMesh,
    state: Vec<f64>,
    mu_nodes: Vec<f64>,
    load: f64,
    reaction: f64,
    report: ConvergenceReport,
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

enum Outcome {
    Converged(StepReport),
    Failed { iterations: usize, residual: f64, cause: &'static str },
}

fn newton_step(
    disc: &Discretization,
    state: &mut Vec<f64>,
    load: f64,
    set: &NewtonSettings,
) -> Outcome {
    let fail = |iterations, residual, cause| Outcome::Failed { iterations, residual, cause };
    let mut r = match disc.assemble(state, load, false) {
        Ok(a) => a.residual,
        Err(_) => return fail(0, f64::NAN, "singular deformation"),
    };
    let mut rn = norm(&r);
    // Relative to the larger of the applied load and the initial imbalance,
    // so that tiny increments are not held to a tolerance below roundoff.
    let reference = rn.max(load.abs() * norm(disc.unit_load()));
    let target = (set.rel_tol * reference).max(set.abs_tol);
    let mut history = vec![rn];
    for it in 1..=set.max_iterations {
        if rn <= target {
            return Outcome::Converged(StepReport {
                load,
                iterations: it - 1,
                residual_norms: history,
            });
        }
        let k = match disc.assemble(state, load, true) {
            Ok(a) => a.tangent.expect("tangent requested"),
            Err(_) => return fail(it, rn, "singular deformation"),
        };
        let mut du: Vec<f64> = r.iter().map(|v| -v).collect();
        if k.solve(&mut du).is_err() {
            return fail(it, rn, "singular tangent");
        }
        if du.iter().any(|v| !v.is_finite()) {
            return fail(it, rn, "non-finite update");
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        loop {
            let trial: Vec<f64> = state.iter().zip(&du).map(|(s, d)| s + alpha * d).collect();
            if let Ok(a) = disc.assemble(&trial, load, false) {
                let tn = norm(&a.residual);
                let min_alpha = alpha < 1.0 / 16.0;
                if tn.is_finite() && (!set.line_search || tn < rn || min_alpha) {
                    accepted = Some((trial, a.residual, tn));
                    break;
                }
            }
            if !set.line_search || alpha < 1.0 / 16.0 {
                break;
            }
            alpha *= 0.5;
        }
        let Some((s, res, tn)) = accepted else {
            return fail(it, rn, "singular deformation");
        };
        *state = s;
        r = res;
        rn = tn;
        history.push(rn);
    }
    if rn <= target {
        return Outcome::Converged(StepReport {
            load,
            iterations: set.max_iterations,
            residual_norms: history,
        });
    }
    fail(set.max_iterations, rn, "iteration limit")
}

/// Incremental-load Newton solve to traction `p0`.
///
/// A failed increment is retried from the last converged state: first, if
/// enabled, by jumping two or three full steps ahead, then with half the
/// increment, at most `max_halvings` times in total.
pub fn newton_solve(
    disc: &Discretization,
    p0: f64,
    settings: &NewtonSettings,
) -> Result<FemSolution, FemError> {
    settings.validate()?;
    let mut state = disc.initial_state();
    let mut report = ConvergenceReport::default();
    let mut current = 0.0;
    // Previous converged point, for the secant predictor.
    let mut previous: Option<(f64, Vec<f64>)> = None;
    let full = p0 / settings.load_steps as f64;
    let mut inc = full;
    let mut jumped_from = None;

    // Newton from the last converged state, falling back to a secant
    // extrapolation of the last two.
    let attempt = |state: &[f64], previous: &Option<(f64, Vec<f64>)>, current: f64, load: f64| {
        let mut trial = state.to_vec();
        let failed = match newton_step(disc, &mut trial, load, settings) {
            Outcome::Converged(step) => return (Outcome::Converged(step), trial),
            failed => failed,
        };
        if let Some((pl, ps)) = previous {
            let t = (load - current) / (current - pl);
            let mut trial: Vec<f64> = state.iter().zip(ps).map(|(a, b)| a + t * (a - b)).collect();
            if let Outcome::Converged(step) = newton_step(disc, &mut trial, load, settings) {
                return (Outcome::Converged(step), trial);
            }
        }
        (failed, trial)
    };

    for s in 1..=settings.load_steps {
        let target = p0 * s as f64 / settings.load_steps as f64;
        while current < target || (p0 == 0.0 && report.steps.len() < s) {
            let load = if current + inc >= target - 1e-12 * p0 { target } else { current + inc };
            let (outcome, trial) = attempt(&state, &previous, current, load);
            let (iterations, residual, cause) = match outcome {
                Outcome::Converged(step) => {
                    previous = Some((current, core::mem::replace(&mut state, trial)));
                    current = load;
                    report.steps.push(step);
                    inc = (2.0 * inc).min(full);
                    continue;
                }
                Outcome::Failed { iterations, residual, cause } => (iterations, residual, cause),
            };
            if settings.step_over && jumped_from != Some(current) {
                jumped_from = Some(current);
                let mut landed = false;
                for k in [2.0, 3.0] {
                    let jump = (current + k * full).min(p0);
                    if jump <= load {
                        continue;
                    }
                    if let (Outcome::Converged(step), trial) = attempt(&state, &previous, current, jump) {
                        previous = Some((current, core::mem::replace(&mut state, trial)));
                        current = jump;
                        report.steps.push(step);
                        report.step_overs.push(jump);
                        landed = true;
                        break;
                    }
                }
                if landed {
                    continue;
                }
            }
            if report.halvings >= settings.max_halvings {
                return Err(FemError::NotConverged {
                    load,
                    halvings: report.halvings,
                    iterations,
                    residual,
                    cause,
                });
            }
            report.halvings += 1;
            inc *= 0.5;
        }
    }
    let internal = disc.internal_forces(&state)?;
    let mesh = disc.mesh();
    let reaction = (0..mesh.disp_nodes_per_side())
        .map(|j| internal[mesh.u_dof(0, j, 0)])
        .sum();
    Ok(FemSolution {
        mesh: mesh.clone(),
        state,
        mu_nodes: disc.nodal_modulus().to_vec(),
        load: p0,
        reaction,
        report,
    })
}

impl FemSolution {
    pub fn mesh(&self) -> &StructuredMesh {
        &self.mesh
    }

    /// Raw nodal vector in the mesh's dof numbering; the pressure entries
    /// are the excess `p − μ` over the nodal modulus.
    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn load(&self) -> f64 {
        self.load
    }

    pub fn report(&self) -> &ConvergenceReport {
        &self.report
    }

    /// Sum of the X1 reaction forces on the left edge. These balance the
    /// applied edge force, so the sum is `-P0` for the unit-height block.
    pub fn left_edge_reaction(&self) -> f64 {
        self.reaction
    }

    pub fn nodal_displacement(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.state[self.mesh.u_dof(i, j, 0)],
            self.state[self.mesh.u_dof(i, j, 1)],
        ]
    }

    pub fn nodal_pressure(&self, i: usize, j: usize) -> f64 {
        let np = self.mesh.pressure_nodes_per_side();
        self.state[self.mesh.p_dof(i, j)] + self.mu_nodes[j * np + i]
    }

    /// Biquadratic interpolant of the displacement at `x`.
    pub fn displacement(&self, x: Point2) -> Result<[f64; 2], FemError> {
        let (ex, ey, xi, eta) = self.mesh.locate(x)?;
        let (n, _) = q2(xi, eta);
        let dofs = self.mesh.element_u_dofs(ex, ey);
        let mut u = [0.0; 2];
        for (a, na) in n.iter().enumerate() {
            u[0] += na * self.state[dofs[2 * a]];
            u[1] += na * self.state[dofs[2 * a + 1]];
        }
        Ok(u)
    }

    /// Bilinear interpolant of the nodal pressures at `x`.
    pub fn pressure(&self, x: Point2) -> Result<f64, FemError> {
        let (ex, ey, xi, eta) = self.mesh.locate(x)?;
        let m = q1(xi, eta);
        let mut p = 0.0;
        for (k, mk) in m.iter().enumerate() {
            p += mk * self.nodal_pressure(ex + k % 2, ey + k / 2);
        }
        Ok(p)
    }

    pub fn sample_displacements(&self, points: &[Point2]) -> Result<Vec<[f64; 2]>, FemError> {
        points.iter().map(|&x| self.displacement(x)).collect()
    }

    /// Per-element mean of `det F − 1`, row-major over elements.
    pub fn element_volume_change(&self) -> Vec<f64> {
        let n = self.mesh.elements_per_side();
        let h = self.mesh.element_size();
        let table = quadrature_table(h);
        let mut out = Vec::with_capacity(n * n);
        for ey in 0..n {
            for ex in 0..n {
                let dofs = self.mesh.element_u_dofs(ex, ey);
                let mut acc = 0.0;
                for qp in &table {
                    let mut g = [[0.0; 2]; 2];
                    for a in 0..9 {
                        for i in 0..2 {
                            for jj in 0..2 {
                                g[i][jj] += self.state[dofs[2 * a + i]] * qp.dn[a][jj];
                            }
                        }
                    }
                    let det = (1.0 + g[0][0]) * (1.0 + g[1][1]) - g[0][1] * g[1][0];
                    acc += (det - 1.0) * qp.dv;
                }
                out.push(acc / (h * h));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::super::analytic_uniaxial;
    use super::*;
    use crate::mechanics::{ConstantModulus, ModulusField, ReferenceModulus};

    fn solve(n: usize, mu: f64, p0: f64) -> FemSolution {
        let d = Discretization::new(StructuredMesh::new(n).unwrap(), &ConstantModulus(mu)).unwrap();
        newton_solve(&d, p0, &NewtonSettings::default()).unwrap()
    }

    #[test]
    fn zero_load_needs_no_iterations() {
        let s = solve(2, 0.3, 0.0);
        let nd = s.mesh().disp_nodes_per_side();
        for j in 0..nd {
            for i in 0..nd {
                assert_eq!(s.nodal_displacement(i, j), [0.0, 0.0]);
            }
        }
        assert_eq!(s.nodal_pressure(1, 1), 0.3);
        assert!(s.report().steps.iter().all(|st| st.iterations <= 1));
        let d = Discretization::new(StructuredMesh::new(3).unwrap(), &ReferenceModulus).unwrap();
        let s = newton_solve(&d, 0.0, &NewtonSettings::default()).unwrap();
        assert!(s.state().iter().all(|v| *v == 0.0));
        let x = Point2::new(0.3, 0.7);
        let p = s.pressure(x).unwrap();
        assert!((p - ReferenceModulus.value(x)).abs() < 1e-3);
    }

    #[test]
    fn homogeneous_patch_test() {
        let (mu, p0) = (0.3, 0.3);
        let s = solve(4, mu, p0);
        let lam = analytic_uniaxial(mu, p0);
        let nd = s.mesh().disp_nodes_per_side();
        let mut worst: f64 = 0.0;
        for j in 0..nd {
            for i in 0..nd {
                let x = s.mesh().disp_node_coords(s.mesh().disp_node(i, j));
                let u = s.nodal_displacement(i, j);
                worst = worst
                    .max((u[0] - (lam - 1.0) * x.x1).abs())
                    .max((u[1] - (1.0 / lam - 1.0) * x.x2).abs());
            }
        }
        assert!(worst < 1e-8, "{worst:e}");
        assert!((s.left_edge_reaction() + p0).abs() < 1e-8);
        for st in &s.report().steps {
            assert!(st.final_residual() <= 1e-10 * st.residual_norms[0] || st.final_residual() <= 1e-12);
        }
    }

    /// Smooth, moderately graded field for convergence tests.
    struct Graded;

    impl crate::mechanics::ModulusField for Graded {
        fn value(&self, x: Point2) -> f64 {
            0.3 + 0.1 * libm::sin(2.0 * x.x1 + x.x2) * libm::exp(-x.x2)
        }
        fn gradient(&self, _x: Point2) -> [f64; 2] {
            unimplemented!()
        }
    }

    #[test]
    fn newton_converges_quadratically() {
        let d = Discretization::new(StructuredMesh::new(4).unwrap(), &Graded).unwrap();
        let s = newton_solve(&d, 0.3, &NewtonSettings::default()).unwrap();
        assert_eq!(s.report().halvings, 0);
        let mut checked = 0;
        for st in &s.report().steps {
            let r = &st.residual_norms;
            for k in 0..r.len() - 1 {
                if r[k] < 1e-3 && r[k + 1] > 1e-13 {
                    assert!(r[k + 1] <= 100.0 * r[k] * r[k], "{r:?}");
                    checked += 1;
                }
            }
        }
        assert!(checked > 0);
        // The continuous Q1 pressure enforces J = 1 only against the pressure
        // hat functions, so element means are small but not exactly zero.
        let d = s.element_volume_change();
        let worst = d.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(worst < 1e-3, "{worst:e}");
        let weighted = Discretization::new(s.mesh().clone(), &Graded)
            .unwrap()
            .assemble(s.state(), 0.3, false)
            .unwrap()
            .residual;
        let np = s.mesh().pressure_nodes_per_side();
        for j in 0..np {
            for i in 0..np {
                assert!(weighted[s.mesh().p_dof(i, j)].abs() < 1e-13);
            }
        }
    }

    #[test]
    fn sampling_respects_boundary_conditions() {
        let d = Discretization::new(StructuredMesh::new(4).unwrap(), &Graded).unwrap();
        let s = newton_solve(&d, 0.3, &NewtonSettings::default()).unwrap();
        assert_eq!(s.displacement(Point2::new(0.0, 0.0)).unwrap(), [0.0, 0.0]);
        for k in 0..=10 {
            let u = s.displacement(Point2::new(0.0, k as f64 / 10.0)).unwrap();
            assert!(u[0].abs() < 1e-14);
        }
        let node = s.nodal_displacement(3, 5);
        let x = s.mesh().disp_node_coords(s.mesh().disp_node(3, 5));
        assert_eq!(s.displacement(x).unwrap(), node);
        assert!(s.displacement(Point2::new(-0.1, 0.5)).is_err());
    }

    #[test]
    fn bad_settings_rejected() {
        let d = Discretization::new(StructuredMesh::new(1).unwrap(), &ReferenceModulus).unwrap();
        let mut set = NewtonSettings::default();
        set.rel_tol = 2.0;
        assert!(newton_solve(&d, 0.3, &set).is_err());
    }
}
