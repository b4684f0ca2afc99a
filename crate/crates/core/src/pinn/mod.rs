//! Physics-informed loss, training loop and evaluation for the coupled
//! displacement/pressure and modulus networks.

mod adam;
pub mod gradcheck;
mod metrics;
mod objective;
pub mod residual;
mod train;

use alloc::vec::Vec;

use crate::mechanics::{MechanicsError, Point2};
use crate::nets::NetError;

pub use adam::AdamState;
pub use metrics::{error_metrics, predict_mu, ErrorMetrics};
pub use objective::{field_loss, FieldJets, ModulusSource, Objective};
pub use residual::{pde_residual_at, PointResidual};
pub use train::{
    train, HistoryRecord, NoObserver, TrainConfig, TrainError, TrainObserver, TrainOutcome, TrainState,
    TrainingHistory,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PinnError {
    #[error("configuration error: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Mechanics(#[from] MechanicsError),
    #[error("non-finite value in the {term} term")]
    NonFinite { term: &'static str },
    #[error("{what}: expected {expected} entries, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

/// One side of the unit square.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Edge {
    Left,
    Right,
    Bottom,
    Top,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::Left, Edge::Right, Edge::Bottom, Edge::Top];

    pub fn normal(self) -> [f64; 2] {
        match self {
            Edge::Left => [-1.0, 0.0],
            Edge::Right => [1.0, 0.0],
            Edge::Bottom => [0.0, -1.0],
            Edge::Top => [0.0, 1.0],
        }
    }

    /// Point at arc parameter `s` in `[0, 1]`.
    pub fn point(self, s: f64) -> Point2 {
        match self {
            Edge::Left => Point2::new(0.0, s),
            Edge::Right => Point2::new(1.0, s),
            Edge::Bottom => Point2::new(s, 0.0),
            Edge::Top => Point2::new(s, 1.0),
        }
    }

    pub fn contains(self, x: Point2) -> bool {
        const TOL: f64 = 1e-12;
        let on = |c: f64, v: f64| libm::fabs(c - v) <= TOL;
        let inside = |c: f64| (-TOL..=1.0 + TOL).contains(&c);
        match self {
            Edge::Left => on(x.x1, 0.0) && inside(x.x2),
            Edge::Right => on(x.x1, 1.0) && inside(x.x2),
            Edge::Bottom => on(x.x2, 0.0) && inside(x.x1),
            Edge::Top => on(x.x2, 1.0) && inside(x.x1),
        }
    }
}

/// What is prescribed along an edge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EdgeCondition {
    /// Prescribed displacement components; `None` leaves a component free.
    Displacement { u1: Option<f64>, u2: Option<f64> },
    /// Prescribed reference traction `P N0`.
    Traction([f64; 2]),
    Free,
}

/// A single prescribed displacement component at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointConstraint {
    pub at: Point2,
    pub component: usize,
    pub value: f64,
}

/// Geometry, boundary conditions and sampling densities of the problem.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    /// Interior grid nodes per side (covers the closed square).
    pub interior_per_side: usize,
    pub points_per_edge: usize,
    pub measurement_per_side: usize,
    /// Conditions for left, right, bottom and top, in [`Edge::ALL`] order.
    pub edges: [EdgeCondition; 4],
    pub point_constraints: Vec<PointConstraint>,
}

impl ProblemSpec {
    /// Block clamped in X1 on the left, pinned in X2 at the origin, pulled by
    /// `(load, 0)` on the right and traction-free on top and bottom.
    pub fn tension(load: f64) -> Self {
        ProblemSpec {
            interior_per_side: 41,
            points_per_edge: 40,
            measurement_per_side: 21,
            edges: [
                EdgeCondition::Displacement {
                    u1: Some(0.0),
                    u2: None,
                },
                EdgeCondition::Traction([load, 0.0]),
                EdgeCondition::Traction([0.0, 0.0]),
                EdgeCondition::Traction([0.0, 0.0]),
            ],
            point_constraints: alloc::vec![PointConstraint {
                at: Point2::new(0.0, 0.0),
                component: 1,
                value: 0.0,
            }],
        }
    }

    pub fn condition(&self, e: Edge) -> EdgeCondition {
        self.edges[e as usize]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirichletRecord {
    pub at: Point2,
    /// Which components are constrained.
    pub mask: [bool; 2],
    pub target: [f64; 2],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeumannRecord {
    pub at: Point2,
    pub normal: [f64; 2],
    pub target: [f64; 2],
}

/// All point sets entering the loss.
#[derive(Clone, Debug, PartialEq)]
pub struct CollocationSets {
    pub interior: Vec<Point2>,
    pub dirichlet: Vec<DirichletRecord>,
    pub neumann: Vec<NeumannRecord>,
    pub data_points: Vec<Point2>,
    /// Measured displacements at `data_points`, once attached.
    pub measurements: Option<Vec<[f64; 2]>>,
}

/// Initialization seeds of the displacement and modulus networks, derived
/// from one experiment seed.
pub fn network_seeds(seed: u64) -> (u64, u64) {
    use rand::{RngCore, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (rng.next_u64(), rng.next_u64())
}

/// `n` uniform nodes on `[0, 1]`, both ends included.
pub fn linspace01(n: usize) -> impl Iterator<Item = f64> + Clone {
    let d = if n > 1 { (n - 1) as f64 } else { 1.0 };
    (0..n).map(move |i| i as f64 / d)
}

/// Tensor grid with X2 as the outer loop.
pub fn square_grid(n: usize) -> Vec<Point2> {
    let mut out = Vec::with_capacity(n * n);
    for x2 in linspace01(n) {
        for x1 in linspace01(n) {
            out.push(Point2::new(x1, x2));
        }
    }
    out
}

/// Builds the collocation, boundary and measurement point sets.
///
/// Edge points are uniform along each edge including both corners. Point
/// constraints become extra Dirichlet records.
pub fn build_collocation(spec: &ProblemSpec) -> Result<CollocationSets, PinnError> {
    if spec.interior_per_side < 2 || spec.points_per_edge < 2 || spec.measurement_per_side < 1 {
        return Err(PinnError::Config("grid densities too small"));
    }
    let mut dirichlet = Vec::new();
    let mut neumann = Vec::new();
    for e in Edge::ALL {
        match spec.condition(e) {
            EdgeCondition::Displacement { u1, u2 } => {
                if u1.is_none() && u2.is_none() {
                    return Err(PinnError::Config("displacement edge constrains nothing"));
                }
                let mask = [u1.is_some(), u2.is_some()];
                let target = [u1.unwrap_or(0.0), u2.unwrap_or(0.0)];
                for s in linspace01(spec.points_per_edge) {
                    dirichlet.push(DirichletRecord {
                        at: e.point(s),
                        mask,
                        target,
                    });
                }
            }
            EdgeCondition::Traction(t) => {
                if !t.iter().all(|v| v.is_finite()) {
                    return Err(PinnError::Config("non-finite traction"));
                }
                for s in linspace01(spec.points_per_edge) {
                    neumann.push(NeumannRecord {
                        at: e.point(s),
                        normal: e.normal(),
                        target: t,
                    });
                }
            }
            EdgeCondition::Free => {}
        }
    }
    for (k, pc) in spec.point_constraints.iter().enumerate() {
        if pc.component > 1 || !pc.value.is_finite() {
            return Err(PinnError::Config("bad point constraint"));
        }
        if !Edge::ALL.iter().any(|e| e.contains(pc.at)) {
            return Err(PinnError::Config("point constraint must lie on the boundary"));
        }
        for other in &spec.point_constraints[..k] {
            if other.at == pc.at && other.component == pc.component && other.value != pc.value {
                return Err(PinnError::Config("conflicting point constraints"));
            }
        }
        for e in Edge::ALL {
            if let EdgeCondition::Displacement { u1, u2 } = spec.condition(e) {
                let prescribed = [u1, u2][pc.component];
                if e.contains(pc.at) && prescribed.is_some_and(|v| v != pc.value) {
                    return Err(PinnError::Config(
                        "point constraint contradicts an edge displacement",
                    ));
                }
            }
        }
        let mut mask = [false; 2];
        let mut target = [0.0; 2];
        mask[pc.component] = true;
        target[pc.component] = pc.value;
        dirichlet.push(DirichletRecord {
            at: pc.at,
            mask,
            target,
        });
    }
    Ok(CollocationSets {
        interior: square_grid(spec.interior_per_side),
        dirichlet,
        neumann,
        data_points: square_grid(spec.measurement_per_side),
        measurements: None,
    })
}

impl CollocationSets {
    /// Attaches measured displacements, which must be given at exactly the
    /// data points and in the same order.
    pub fn attach_measurements(&mut self, records: &[(Point2, [f64; 2])]) -> Result<(), PinnError> {
        if records.len() != self.data_points.len() {
            return Err(PinnError::Shape {
                what: "measurements",
                expected: self.data_points.len(),
                got: records.len(),
            });
        }
        for ((x, u), p) in records.iter().zip(&self.data_points) {
            if libm::fabs(x.x1 - p.x1) > 1e-12 || libm::fabs(x.x2 - p.x2) > 1e-12 {
                return Err(PinnError::Config("measurement location does not match the grid"));
            }
            if !u[0].is_finite() || !u[1].is_finite() {
                return Err(PinnError::Config("non-finite measurement"));
            }
        }
        self.measurements = Some(records.iter().map(|r| r.1).collect());
        Ok(())
    }
}

/// Weights of the five loss terms; the PDE and incompressibility terms share
/// `w_f`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub w_u: f64,
    pub w_f: f64,
    pub w_d: f64,
    pub w_t: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_u: 10.0,
            w_f: 1.0,
            w_d: 1.0,
            w_t: 3.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), PinnError> {
        let all = [self.w_u, self.w_f, self.w_d, self.w_t];
        if all.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(PinnError::Config("loss weights must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Weighted loss terms.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub data: f64,
    pub pde: f64,
    pub incompressibility: f64,
    pub dirichlet: f64,
    pub neumann: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.data + self.pde + self.incompressibility + self.dirichlet + self.neumann
    }

    pub const TERM_NAMES: [&'static str; 5] =
        ["data", "pde", "incompressibility", "dirichlet", "neumann"];

    pub fn terms(&self) -> [f64; 5] {
        [
            self.data,
            self.pde,
            self.incompressibility,
            self.dirichlet,
            self.neumann,
        ]
    }
}

#[cfg(test)]
mod tests {
    #[test]
    fn network_seeds_differ_and_repeat() {
        let (a, b) = super::network_seeds(7);
        assert_ne!(a, b);
        assert_eq!(super::network_seeds(7), (a, b));
        assert_ne!(super::network_seeds(8), (a, b));
    }

    use super::*;

    #[test]
    fn default_counts() {
        let s = build_collocation(&ProblemSpec::tension(0.3)).unwrap();
        assert_eq!(s.interior.len(), 1681);
        assert_eq!(s.dirichlet.len(), 41);
        assert_eq!(s.neumann.len(), 120);
        assert_eq!(s.data_points.len(), 441);
    }

    #[test]
    fn targets_and_normals() {
        let s = build_collocation(&ProblemSpec::tension(0.3)).unwrap();
        for r in &s.neumann {
            if r.normal == [1.0, 0.0] {
                assert_eq!(r.target, [0.3, 0.0]);
                assert!(Edge::Right.contains(r.at));
            } else {
                assert_eq!(r.target, [0.0, 0.0]);
            }
        }
        assert_eq!(s.neumann.iter().filter(|r| r.normal == [0.0, 1.0]).count(), 40);
        let corner = s.dirichlet.last().unwrap();
        assert_eq!(corner.at, Point2::new(0.0, 0.0));
        assert_eq!(corner.mask, [false, true]);
        assert!(s.dirichlet[..40].iter().all(|r| r.mask == [true, false] && r.at.x1 == 0.0));
        for p in s.interior.iter().chain(&s.data_points) {
            assert!((0.0..=1.0).contains(&p.x1) && (0.0..=1.0).contains(&p.x2));
        }
    }

    #[test]
    fn contradictory_conditions_rejected() {
        let mut spec = ProblemSpec::tension(0.3);
        spec.point_constraints[0].component = 0;
        spec.point_constraints[0].value = 0.1;
        assert!(build_collocation(&spec).is_err());
        let mut spec = ProblemSpec::tension(0.3);
        spec.point_constraints.push(PointConstraint {
            at: Point2::new(0.0, 0.0),
            component: 1,
            value: 1.0,
        });
        assert!(build_collocation(&spec).is_err());
        let mut spec = ProblemSpec::tension(0.3);
        spec.point_constraints[0].at = Point2::new(0.5, 0.5);
        assert!(build_collocation(&spec).is_err());
        let mut spec = ProblemSpec::tension(0.3);
        spec.edges[0] = EdgeCondition::Displacement { u1: None, u2: None };
        assert!(build_collocation(&spec).is_err());
    }

    #[test]
    fn measurements_must_match_grid() {
        let mut s = build_collocation(&ProblemSpec::tension(0.3)).unwrap();
        let mut rec: Vec<_> = s.data_points.iter().map(|p| (*p, [0.0, 0.0])).collect();
        s.attach_measurements(&rec).unwrap();
        rec[3].0.x1 += 1e-6;
        assert!(s.attach_measurements(&rec).is_err());
        assert!(s.attach_measurements(&rec[1..]).is_err());
    }
}
