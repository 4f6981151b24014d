//! Independent references: dense matrices, closed forms and refinement
//! ratios.

use bdmut::grid::{Axis, Grid, GridField};
use bdmut::pde::{self, initial_condition, IntegrateOptions, Model, ModelKind};
use bdmut::spectral::{self, compare_restricted, explicit_1d, piecewise_validation};
use bdmut::{Domain, PhenotypeLandscape};
use nalgebra::{DMatrix, DVector};

fn grid_2d(n0: usize, n1: usize) -> Grid {
    Grid::new(vec![Axis::new(-1.3, 1.3, n0).unwrap(), Axis::new(-1.3, 1.3, n1).unwrap()]).unwrap()
}

/// `D L diag(u)` with even-reflection ghost nodes.
fn dense_mutation(grid: &Grid, diffusion: f64, u: &[f64]) -> DMatrix<f64> {
    let n = grid.len();
    let mut a = DMatrix::zeros(n, n);
    for idx in 0..n {
        for k in 0..grid.dim() {
            let ih = diffusion / grid.spacing(k).powi(2);
            let i = grid.index_along(idx, k);
            let stride = grid.stride(k);
            let left = if i == 0 { idx + stride } else { idx - stride };
            let right = if i + 1 == grid.axis(k).nodes { idx - stride } else { idx + stride };
            a[(idx, left)] += ih * u[left];
            a[(idx, right)] += ih * u[right];
            a[(idx, idx)] -= 2.0 * ih * u[idx];
        }
    }
    a
}

struct Dense {
    mutation: DMatrix<f64>,
    fitness: DVector<f64>,
    weights: DVector<f64>,
}

impl Dense {
    fn new(kind: ModelKind, land: &PhenotypeLandscape, grid: &Grid, diffusion: f64) -> Self {
        let u = match kind {
            ModelKind::QB => grid.tabulate(|p| land.birth(p).unwrap()),
            ModelKind::QStand => vec![1.0; grid.len()],
        };
        Self {
            mutation: dense_mutation(grid, diffusion, &u),
            fitness: DVector::from_vec(grid.tabulate(|p| land.fitness(p).unwrap())),
            weights: DVector::from_vec(grid.weights()),
        }
    }

    fn rhs(&self, q: &DVector<f64>) -> DVector<f64> {
        let mbar = self.weights.component_mul(&self.fitness).dot(q) / self.weights.dot(q);
        &self.mutation * q + q.component_mul(&self.fitness.add_scalar(-mbar))
    }

    fn rk4(&self, q: &DVector<f64>, dt: f64) -> DVector<f64> {
        let k1 = self.rhs(q);
        let k2 = self.rhs(&(q + &k1 * (dt / 2.0)));
        let k3 = self.rhs(&(q + &k2 * (dt / 2.0)));
        let k4 = self.rhs(&(q + &k3 * dt));
        let mut next = q + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        next.apply(|v| *v = v.max(0.0));
        let mass = self.weights.dot(&next);
        next / mass
    }
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / scale).fold(0.0, f64::max)
}

#[test]
fn rhs_matches_dense_assembly() {
    let land = PhenotypeLandscape::standard();
    for (n0, n1) in [(5, 5), (7, 6), (3, 7)] {
        let grid = grid_2d(n0, n1);
        let q = GridField::new(grid.clone(), grid.tabulate(|p| 1.0 + 0.4 * p[0] + 0.1 * p[1] * p[0])).unwrap();
        for kind in [ModelKind::QB, ModelKind::QStand] {
            let dense = Dense::new(kind, &land, &grid, 3e-3);
            let reference = dense.rhs(&DVector::from_column_slice(q.values()));
            let got = pde::rhs(Model::new(kind, 3e-3).unwrap(), &land, &q).unwrap();
            assert!(max_rel(got.values(), reference.as_slice()) < 1e-12, "{kind:?} on {n0}x{n1}");
        }
    }
}

#[test]
fn rk4_steps_match_dense_reference() {
    let land = PhenotypeLandscape::standard();
    let grid = grid_2d(7, 7);
    let q0 = initial_condition(&grid, &[0.0, -0.3], 0.5).unwrap();
    for kind in [ModelKind::QB, ModelKind::QStand] {
        let model = Model::new(kind, 1e-2).unwrap();
        let run = pde::integrate(model, &land, &q0, 2.0, &[0.0, 2.0], &IntegrateOptions::default()).unwrap();
        let dense = Dense::new(kind, &land, &grid, 1e-2);
        let dt = 2.0 / run.steps as f64;
        let mut q = DVector::from_column_slice(q0.values());
        for _ in 0..run.steps {
            q = dense.rk4(&q, dt);
        }
        assert!(run.steps > 1);
        assert!(max_rel(run.field.values(), q.as_slice()) < 1e-12, "{kind:?}");
    }
}

#[test]
fn stationary_state_matches_dense_eigenproblem() {
    let land = PhenotypeLandscape::standard();
    for (n0, n1, d) in [(9, 11, 5e-3), (21, 21, 2e-3)] {
        let grid = grid_2d(n0, n1);
        let dense = Dense::new(ModelKind::QB, &land, &grid, d);
        let a = &dense.mutation + DMatrix::from_diagonal(&dense.fitness);
        let top = a.clone().complex_eigenvalues().iter().map(|z| z.re).fold(f64::MIN, f64::max);
        let sol = spectral::solve_stationary(&land, &grid, d).unwrap();
        assert!((sol.m_inf - top).abs() < 1e-8, "{} vs {top}", sol.m_inf);

        // Inverse iteration from the uniform field, independent of the solver.
        let lu = (a - DMatrix::identity(grid.len(), grid.len()) * (top + 1e-7)).lu();
        let mut v = DVector::from_element(grid.len(), 1.0);
        for _ in 0..4 {
            v = lu.solve(&v).unwrap();
            v /= v.amax();
        }
        v /= dense.weights.dot(&v);
        assert!(max_rel(sol.q_inf.values(), v.as_slice()) < 1e-8);
    }
}

#[test]
fn one_dimensional_solver_matches_dense_eigenproblem() {
    let land = PhenotypeLandscape::gaussian_two_peak(1, 0.5, vec![0.1], 0.7, 1.7).unwrap();
    let grid = Grid::uniform(1, -1.3, 1.3, 61).unwrap();
    let dense = Dense::new(ModelKind::QB, &land, &grid, 1e-3);
    let a = &dense.mutation + DMatrix::from_diagonal(&dense.fitness);
    let top = a.complex_eigenvalues().iter().map(|z| z.re).fold(f64::MIN, f64::max);
    let sol = spectral::solve_stationary(&land, &grid, 1e-3).unwrap();
    assert!((sol.m_inf - top).abs() < 1e-8);
}

/// Weak-form solution with `bq` and `(bq)'` continuous at 0: on each half
/// `bq` is a sine vanishing at the outer end, with frequency scaled by
/// `1/√b`.
struct WeakPiecewise {
    a: f64,
    kappa: f64,
    left: f64,
    right: f64,
    total: f64,
}

impl WeakPiecewise {
    fn new(diffusion: f64, a: f64, r: f64) -> (Self, f64) {
        let s2 = std::f64::consts::SQRT_2;
        let f = |y: f64| y.tan() + s2 * (y / s2).tan();
        // Root between the poles π/2 of tan y and π/√2 of tan(y/√2).
        let (mut lo, mut hi) = (std::f64::consts::FRAC_PI_2 + 1e-9, std::f64::consts::PI / s2 - 1e-9);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(lo) * f(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let y = 0.5 * (lo + hi);
        let kappa = y / a;
        // v = sin(κ(x+a)) on the left, C sin(κ(a-x)/√2) on the right.
        let c = (kappa * a).sin() / (kappa * a / s2).sin();
        let left = (1.0 - (kappa * a).cos()) / kappa;
        let right = c * s2 * (1.0 - (kappa * a / s2).cos()) / kappa / 2.0;
        let eigen = 3.0 - r - diffusion * kappa * kappa;
        (
            Self {
                a,
                kappa,
                left: 1.0,
                right: c,
                total: left + right,
            },
            eigen,
        )
    }

    fn density(&self, x: f64) -> f64 {
        if x.abs() >= self.a {
            0.0
        } else if x < 0.0 {
            self.left * (self.kappa * (x + self.a)).sin() / self.total
        } else {
            self.right * (self.kappa * (self.a - x) / std::f64::consts::SQRT_2).sin() / 2.0 / self.total
        }
    }
}

#[test]
fn piecewise_solver_converges_to_the_weak_solution() {
    let (d, a, big_m, r) = (1e-3, 1.0, 10.0, 2.0);
    let (weak, eigen) = WeakPiecewise::new(d, a, r);
    assert!((weak.kappa * a - 1.789930).abs() < 1e-6);
    let report = piecewise_validation(d, a, big_m, r, 2001).unwrap();
    let half = spectral::PIECEWISE_MARGIN * a;
    let grid = Grid::uniform(1, -half, half, 2001).unwrap();
    let (l1, _, _) = compare_restricted(&report.solution, &grid, a, |x| weak.density(x)).unwrap();
    assert!(l1 < 2e-2, "L1 to the weak solution {l1}");
    // The exterior layer only shifts the eigenvalue by O(sqrt(D/M)).
    assert!((report.m_inf_numeric - eigen).abs() < 2e-3);

    // The q-continuous closed form is a different function.
    let exact = explicit_1d(d, a, r).unwrap();
    let n = 20_001;
    let h = 2.0 * a / (n - 1) as f64;
    let gap: f64 = (0..n)
        .map(|i| {
            let x = -a + i as f64 * h;
            let w = if i == 0 || i + 1 == n { 0.5 * h } else { h };
            w * (exact.density(x) - weak.density(x)).abs()
        })
        .sum();
    assert!((gap - 0.305).abs() < 5e-3, "closed forms differ by {gap}");
    assert!(report.l1_error > 0.25);
}

#[test]
fn flat_tanh_landscape_keeps_inverse_birth_density() {
    let land = PhenotypeLandscape::tanh(40.0, 1.0, 2.0).unwrap();
    let grid = Grid::uniform(1, -1.0, 1.0, 201).unwrap();
    let target = spectral::inverse_birth_density(&land, &grid).unwrap();
    let sol = spectral::solve_stationary(&land, &grid, 1e-2).unwrap();
    assert!(sol.q_inf.l1_distance(&target) < 1e-10);
    // From the symmetric start the mean moves toward low birth rates.
    let q0 = initial_condition(&grid, &[0.0], 0.05).unwrap();
    let run = pde::integrate(Model::qb(1e-2).unwrap(), &land, &q0, 5.0, &[0.0, 5.0], &IntegrateOptions::default()).unwrap();
    assert!(run.trajectory.xbar1()[1] < 0.0);
    assert!(run.field.l1_distance(&target) < q0.l1_distance(&target));
}

#[test]
fn refinement_ratios_are_second_order() {
    let land = PhenotypeLandscape::gaussian_two_peak(1, 0.5, vec![0.1], 0.7, 1.7).unwrap();
    for (model, t) in [(Model::qb(1e-3).unwrap(), 20.0), (Model::qstand(1e-3).unwrap(), 10.0)] {
        let x: Vec<f64> = [101, 201, 401]
            .iter()
            .map(|&n| {
                let grid = Grid::uniform(1, -1.3, 1.3, n).unwrap();
                let q0 = initial_condition(&grid, &[0.2], 0.1).unwrap();
                let run = pde::integrate(model, &land, &q0, t, &[0.0, t], &IntegrateOptions::default()).unwrap();
                run.trajectory.xbar1()[1]
            })
            .collect();
        let ratio = (x[0] - x[1]) / (x[1] - x[2]);
        assert!((3.5..=4.5).contains(&ratio), "{:?}: ratio {ratio} from {x:?}", model.kind);
    }
}

#[test]
fn domain_override_changes_only_the_box() {
    let land = PhenotypeLandscape::standard().with_domain(Domain::cube(2, -1.0, 1.0)).unwrap();
    assert_eq!(land.domain.bounds, vec![(-1.0, 1.0); 2]);
    assert_eq!(land.fitness(&[0.1, 0.2]).unwrap(), PhenotypeLandscape::standard().fitness(&[0.1, 0.2]).unwrap());
}
