//! 1-D cell-centered finite-volume discretization with no-flux boundaries,
//! and the discrete functionals: entropy, dissipation integrands, masses,
//! Fisher information, the H^{-1} seminorm through the Neumann Poisson
//! preimage, and the Gajewski convexity-defect distance.
//!
//! Two-point fluxes on a uniform grid make conservation and the
//! summation-by-parts identity exact by telescoping, which is what turns the
//! continuous entropy-dissipation computation into an exact discrete one.

use crate::entropy::{entropy_density, xlogx, StatePoint};
use crate::error::{Error, Result};
use crate::model::ModelSpec;

/// Uniform 1-D grid of `cells` cells on `[0, length]`, cell centers at
/// `(j + 1/2) dx`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid1D {
    length: f64,
    cells: usize,
}

impl Grid1D {
    pub fn new(length: f64, cells: usize) -> Result<Self> {
        if !(length > 0.0) || cells < 2 {
            return Err(Error::Config(format!(
                "grid needs positive length and at least 2 cells (got {length}, {cells})"
            )));
        }
        Ok(Self { length, cells })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn dx(&self) -> f64 {
        self.length / self.cells as f64
    }

    pub fn cell_center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dx()
    }
}

/// Volume fractions of `n` species over a grid, stored species-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    n: usize,
    grid: Grid1D,
    data: Vec<f64>,
}

impl Field {
    pub fn uniform(grid: Grid1D, point: &StatePoint) -> Self {
        let n = point.n();
        let mut data = Vec::with_capacity(n * grid.cells());
        for i in 0..n {
            data.extend(std::iter::repeat_n(point.u()[i], grid.cells()));
        }
        Self { n, grid, data }
    }

    /// Build from a profile function of `(species, x)` and validate every
    /// cell against the closed simplex.
    pub fn from_profile(
        grid: Grid1D,
        n: usize,
        profile: impl Fn(usize, f64) -> f64,
    ) -> Result<Self> {
        let mut data = vec![0.0; n * grid.cells()];
        for i in 0..n {
            for j in 0..grid.cells() {
                data[i * grid.cells() + j] = profile(i, grid.cell_center(j));
            }
        }
        let f = Self { n, grid, data };
        f.validate()?;
        Ok(f)
    }

    pub fn from_raw(grid: Grid1D, n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * grid.cells() {
            return Err(Error::Config("field data length mismatch".into()));
        }
        let f = Self { n, grid, data };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        for j in 0..self.grid.cells() {
            let mut sum = 0.0;
            for i in 0..self.n {
                let v = self.get(i, j);
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::BoundaryState(format!(
                        "cell {j}, species {i}: value {v}"
                    )));
                }
                sum += v;
            }
            if sum > 1.0 + 1e-12 {
                return Err(Error::BoundaryState(format!("cell {j}: sum {sum} > 1")));
            }
        }
        Ok(())
    }

    pub fn n_species(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> Grid1D {
        self.grid
    }

    #[inline]
    pub fn get(&self, species: usize, cell: usize) -> f64 {
        self.data[species * self.grid.cells() + cell]
    }

    #[inline]
    pub fn set(&mut self, species: usize, cell: usize, v: f64) {
        self.data[species * self.grid.cells() + cell] = v;
    }

    pub fn species(&self, i: usize) -> &[f64] {
        &self.data[i * self.grid.cells()..(i + 1) * self.grid.cells()]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn vacancy_at(&self, j: usize) -> f64 {
        let mut sum = 0.0;
        for i in 0..self.n {
            sum += self.get(i, j);
        }
        (1.0 - sum).max(0.0)
    }

    pub fn vacancy_profile(&self) -> Vec<f64> {
        (0..self.grid.cells()).map(|j| self.vacancy_at(j)).collect()
    }

    pub fn state_at(&self, j: usize) -> StatePoint {
        let u: Vec<f64> = (0..self.n).map(|i| self.get(i, j)).collect();
        StatePoint::new(u).expect("validated field column")
    }

    /// Species masses `sum_j u_ij dx`.
    pub fn masses(&self) -> Vec<f64> {
        let dx = self.grid.dx();
        (0..self.n).map(|i| self.species(i).iter().sum::<f64>() * dx).collect()
    }

    pub fn min_species_value(&self) -> f64 {
        self.data.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn min_vacancy(&self) -> f64 {
        (0..self.grid.cells()).map(|j| self.vacancy_at(j)).fold(f64::INFINITY, f64::min)
    }

    /// Spatial means per species (the constant steady state).
    pub fn means(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.species(i).iter().sum::<f64>() / self.grid.cells() as f64)
            .collect()
    }
}

/// Face values of the gradient of a cell field: zero on the two boundary
/// faces (no-flux), `(f_{j+1} - f_j)/dx` inside. Length `N + 1`.
pub fn face_gradient(f: &[f64], dx: f64) -> Vec<f64> {
    let n = f.len();
    let mut g = vec![0.0; n + 1];
    for j in 0..n.saturating_sub(1) {
        g[j + 1] = (f[j + 1] - f[j]) / dx;
    }
    g
}

/// Cell divergence of face fluxes: `(F_{j+1} - F_j)/dx`. Length `N`.
pub fn cell_divergence(fluxes: &[f64], dx: f64) -> Vec<f64> {
    let n = fluxes.len() - 1;
    let mut d = vec![0.0; n];
    for j in 0..n {
        d[j] = (fluxes[j + 1] - fluxes[j]) / dx;
    }
    d
}

/// Midpoint-rule entropy `sum_j h(u_j) dx`; propagates the +inf marker.
pub fn discrete_entropy(field: &Field, model: &ModelSpec) -> f64 {
    let dx = field.grid().dx();
    let mut total = 0.0;
    for j in 0..field.grid().cells() {
        total += entropy_density(&field.state_at(j), model);
    }
    total * dx
}

/// Midpoint-rule relative entropy of a field against a constant state.
pub fn discrete_relative_entropy(
    field: &Field,
    uinf: &crate::entropy::StatePoint,
    model: &ModelSpec,
) -> Result<f64> {
    let dx = field.grid().dx();
    let mut total = 0.0;
    for j in 0..field.grid().cells() {
        total += crate::entropy::relative_entropy(&field.state_at(j), uinf, model)?.total;
    }
    Ok(total * dx)
}

/// The two dissipation integrands of the entropy inequality together with
/// the entropy and the masses of the field.
#[derive(Clone, Debug)]
pub struct DissipationReport {
    /// `sum_i int q(u_{n+1})^2 |grad sqrt(u_i)|^2`
    pub grad_sqrt_u_term: f64,
    /// `int |grad sqrt(q(u_{n+1}))|^2`
    pub grad_sqrt_q_term: f64,
    pub entropy: f64,
    pub masses: Vec<f64>,
}

/// Face-centered evaluation of the dissipation integrands: gradients of
/// `sqrt(u_i)` and `sqrt(q)` from cell values, `q^2` face-averaged.
pub fn dissipation_functionals(field: &Field, model: &ModelSpec) -> DissipationReport {
    let grid = field.grid();
    let dx = grid.dx();
    let cells = grid.cells();
    let q_cells: Vec<f64> = (0..cells).map(|j| model.q.q(field.vacancy_at(j))).collect();
    let sqrt_q: Vec<f64> = q_cells.iter().map(|&q| q.max(0.0).sqrt()).collect();

    let mut grad_sqrt_u_term = 0.0;
    for i in 0..field.n_species() {
        let s = field.species(i);
        for j in 0..cells - 1 {
            let g = (s[j + 1].max(0.0).sqrt() - s[j].max(0.0).sqrt()) / dx;
            let q2 = 0.5 * (q_cells[j] * q_cells[j] + q_cells[j + 1] * q_cells[j + 1]);
            grad_sqrt_u_term += q2 * g * g * dx;
        }
    }
    let mut grad_sqrt_q_term = 0.0;
    for j in 0..cells - 1 {
        let g = (sqrt_q[j + 1] - sqrt_q[j]) / dx;
        grad_sqrt_q_term += g * g * dx;
    }
    DissipationReport {
        grad_sqrt_u_term,
        grad_sqrt_q_term,
        entropy: discrete_entropy(field, model),
        masses: field.masses(),
    }
}

/// Discrete Fisher information `sum_faces |grad sqrt(f)|^2 mu dx` with the
/// face weight the arithmetic average of the neighboring cells.
pub fn fisher_information(f: &[f64], mu: &[f64], dx: f64) -> f64 {
    assert_eq!(f.len(), mu.len());
    let mut total = 0.0;
    for j in 0..f.len().saturating_sub(1) {
        let g = (f[j + 1].max(0.0).sqrt() - f[j].max(0.0).sqrt()) / dx;
        total += g * g * 0.5 * (mu[j] + mu[j + 1]) * dx;
    }
    total
}

/// H^{-1} seminorm of a zero-mean cell field: the gradient of the Neumann
/// Poisson preimage is the cumulative sum of `-f dx`, so
/// `|f|_{H^-1}^2 = sum_faces |grad zeta|^2 dx` needs no linear solve in 1-D.
pub fn hminus1_seminorm(f: &[f64], grid: Grid1D) -> Result<f64> {
    assert_eq!(f.len(), grid.cells());
    let dx = grid.dx();
    let mean: f64 = f.iter().sum::<f64>() * dx;
    if mean.abs() > 1e-10 {
        return Err(Error::NonzeroMean(mean));
    }
    let mut acc = 0.0;
    let mut total = 0.0;
    for &fj in f.iter().take(grid.cells() - 1) {
        acc -= fj * dx;
        total += acc * acc * dx;
    }
    Ok(total.sqrt())
}

/// Convexity defect of the regularized log entropy between two fields:
/// `sum_i int [xi_eps(u_i) + xi_eps(v_i) - 2 xi_eps((u_i+v_i)/2)]`, always
/// nonnegative and vanishing iff the fields agree.
pub fn gajewski_distance(u: &Field, v: &Field, eps: f64) -> Result<f64> {
    if u.grid() != v.grid() || u.n_species() != v.n_species() {
        return Err(Error::Config("fields live on different grids".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::Config(format!("eps must be positive (got {eps})")));
    }
    let xi = |s: f64| -> f64 { xlogx(s + eps) - (s + eps) + 1.0 };
    let dx = u.grid().dx();
    let mut total = 0.0;
    for i in 0..u.n_species() {
        let a = u.species(i);
        let b = v.species(i);
        for j in 0..u.grid().cells() {
            total += xi(a[j]) + xi(b[j]) - 2.0 * xi(0.5 * (a[j] + b[j]));
        }
    }
    Ok((total * dx).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SquareMat;
    use crate::model::ModelSpec;
    use crate::quad;
    use rand::Rng;
    use rand::SeedableRng;

    fn grid(n: usize) -> Grid1D {
        Grid1D::new(1.0, n).unwrap()
    }

    #[test]
    fn face_gradient_basics() {
        let g = grid(4);
        let constant = vec![0.7; 4];
        assert!(face_gradient(&constant, g.dx()).iter().all(|&x| x == 0.0));

        let linear: Vec<f64> = (0..4).map(|j| g.cell_center(j)).collect();
        let fg = face_gradient(&linear, g.dx());
        assert_eq!(fg[0], 0.0);
        assert_eq!(fg[4], 0.0);
        for &v in &fg[1..4] {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn divergence_telescopes() {
        let g = grid(8);
        let fluxes: Vec<f64> = (0..9).map(|k| if k == 0 || k == 8 { 0.0 } else { (k as f64).sin() }).collect();
        let div = cell_divergence(&fluxes, g.dx());
        let integral: f64 = div.iter().sum::<f64>() * g.dx();
        assert!(integral.abs() < 1e-14);
        let constant = vec![2.5; 9];
        assert!(cell_divergence(&constant, g.dx()).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn summation_by_parts_exact() {
        // sum_j div(F)_j g_j dx = -sum_faces F grad(g) dx when boundary
        // fluxes vanish
        let g = grid(33);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut fluxes = vec![0.0; 34];
        for f in fluxes[1..33].iter_mut() {
            *f = rng.gen::<f64>() - 0.5;
        }
        let cellv: Vec<f64> = (0..33).map(|_| rng.gen::<f64>()).collect();
        let div = cell_divergence(&fluxes, g.dx());
        let lhs: f64 = div.iter().zip(cellv.iter()).map(|(d, v)| d * v).sum::<f64>() * g.dx();
        let grad = face_gradient(&cellv, g.dx());
        let rhs: f64 =
            -fluxes.iter().zip(grad.iter()).map(|(f, gg)| f * gg).sum::<f64>() * g.dx();
        assert!((lhs - rhs).abs() <= 1e-13 * (1.0 + lhs.abs()), "{lhs} vs {rhs}");
    }

    #[test]
    fn neumann_laplacian_symmetric_nsd() {
        let g = grid(12);
        let n = g.cells();
        let mut mat = SquareMat::zeros(n);
        for k in 0..n {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            let lap = cell_divergence(&face_gradient(&e, g.dx()), g.dx());
            for r in 0..n {
                mat.set(r, k, lap[r]);
            }
        }
        assert!(mat.max_asymmetry() < 1e-10);
        let eigs = mat.sym_eigenvalues();
        assert!(eigs.iter().all(|&e| e <= 1e-9), "{eigs:?}");
        // kernel = constants: largest eigenvalue is 0
        assert!(eigs.last().unwrap().abs() < 1e-9);
    }

    #[test]
    fn discrete_entropy_uniform_and_refinement() {
        let m = ModelSpec::by_name("skt-volume", 2).unwrap();
        let p = StatePoint::new(vec![0.25, 0.25]).unwrap();
        let f = Field::uniform(grid(16), &p);
        let h = discrete_entropy(&f, &m);
        assert!((h - 1.1137056388801093).abs() < 1e-12);

        // midpoint rule is second order on smooth profiles; the profile must
        // not be even around the endpoints or the dx^2 term cancels
        let m1 = ModelSpec::by_name("ion-transport", 1).unwrap();
        let profile = |_: usize, x: f64| 0.3 + 0.25 * x * x;
        let coarse = discrete_entropy(&Field::from_profile(grid(32), 1, profile).unwrap(), &m1);
        let mid = discrete_entropy(&Field::from_profile(grid(64), 1, profile).unwrap(), &m1);
        let fine = discrete_entropy(&Field::from_profile(grid(128), 1, profile).unwrap(), &m1);
        let ratio = (coarse - mid) / (mid - fine);
        assert!((ratio - 4.0).abs() < 0.3, "ratio {ratio}");
    }

    #[test]
    fn dissipation_zero_on_uniform() {
        let m = ModelSpec::by_name("ion-transport", 2).unwrap();
        let f = Field::uniform(grid(20), &StatePoint::new(vec![0.3, 0.2]).unwrap());
        let d = dissipation_functionals(&f, &m);
        assert_eq!(d.grad_sqrt_u_term, 0.0);
        assert_eq!(d.grad_sqrt_q_term, 0.0);
        assert!((d.masses[0] - 0.3).abs() < 1e-14);
        assert!((d.masses[1] - 0.2).abs() < 1e-14);
    }

    #[test]
    fn dissipation_converges_to_quadrature_oracle() {
        // u1 = 0.5 + 0.1 cos(pi x), q = s: the q-gradient term tends to
        // int |d/dx sqrt(0.5 - 0.1 cos(pi x))|^2 dx
        let m = ModelSpec::by_name("ion-transport", 1).unwrap();
        let pi = std::f64::consts::PI;
        let oracle_q = quad::integrate(
            |x| {
                let v = 0.5 - 0.1 * (pi * x).cos();
                let dv = 0.1 * pi * (pi * x).sin();
                let d = dv / (2.0 * v.sqrt());
                d * d
            },
            0.0,
            1.0,
            1e-13,
        );
        let oracle_u = quad::integrate(
            |x| {
                let u = 0.5 + 0.1 * (pi * x).cos();
                let q = 1.0 - u;
                let du = -0.1 * pi * (pi * x).sin();
                let d = du / (2.0 * u.sqrt());
                q * q * d * d
            },
            0.0,
            1.0,
            1e-13,
        );
        let mut errs = Vec::new();
        for n in [32, 64, 128, 256] {
            let f = Field::from_profile(grid(n), 1, |_, x| 0.5 + 0.1 * (pi * x).cos()).unwrap();
            let d = dissipation_functionals(&f, &m);
            assert!(d.grad_sqrt_q_term >= 0.0 && d.grad_sqrt_u_term >= 0.0);
            errs.push(
                (d.grad_sqrt_q_term - oracle_q).abs() + (d.grad_sqrt_u_term - oracle_u).abs(),
            );
        }
        for k in 1..errs.len() {
            assert!(errs[k] < errs[k - 1], "{errs:?}");
        }
        assert!(*errs.last().unwrap() < 1e-5, "{errs:?}");
    }

    #[test]
    fn fisher_information_properties() {
        let g = grid(50);
        // constant field has no information
        assert_eq!(fisher_information(&[0.4; 50], &[1.0; 50], g.dx()), 0.0);
        // exact doubling: |grad sqrt(2f)|^2 = 2 |grad sqrt(f)|^2
        let f: Vec<f64> = (0..50).map(|j| 0.2 + 0.1 * (j as f64 * 0.3).sin()).collect();
        let f2: Vec<f64> = f.iter().map(|x| 2.0 * x).collect();
        let mu = vec![1.0; 50];
        let a = fisher_information(&f, &mu, g.dx());
        let b = fisher_information(&f2, &mu, g.dx());
        assert!((b - 2.0 * a).abs() < 1e-14 * (1.0 + b.abs()));
    }

    #[test]
    fn fisher_subadditive_on_random_triples() {
        let g = grid(100);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        for _ in 0..1000 {
            let f: Vec<f64> = (0..100).map(|_| rng.gen::<f64>()).collect();
            let h: Vec<f64> = (0..100).map(|_| rng.gen::<f64>()).collect();
            let mu: Vec<f64> = (0..100).map(|_| rng.gen::<f64>()).collect();
            let sum: Vec<f64> = f.iter().zip(h.iter()).map(|(a, b)| a + b).collect();
            let lhs = fisher_information(&sum, &mu, g.dx());
            let rhs = fisher_information(&f, &mu, g.dx()) + fisher_information(&h, &mu, g.dx());
            assert!(lhs <= rhs + 1e-12, "{lhs} > {rhs}");
        }
    }

    #[test]
    fn hminus1_eigenfunction_limit() {
        // f = cos(pi x): seminorm tends to 1/(pi sqrt(2))
        let pi = std::f64::consts::PI;
        let target = 1.0 / (pi * 2.0_f64.sqrt());
        let mut prev = f64::INFINITY;
        for n in [32, 64, 128, 256] {
            let g = grid(n);
            let f: Vec<f64> = (0..n).map(|j| (pi * g.cell_center(j)).cos()).collect();
            let s = hminus1_seminorm(&f, g).unwrap();
            let err = (s - target).abs();
            assert!(err < prev);
            prev = err;
        }
        assert!(prev < 1e-4, "{prev}");
    }

    #[test]
    fn hminus1_gates_and_linearity() {
        let g = grid(16);
        assert_eq!(hminus1_seminorm(&[0.0; 16], g).unwrap(), 0.0);
        assert!(matches!(
            hminus1_seminorm(&[1.0; 16], g),
            Err(Error::NonzeroMean(_))
        ));
        let pi = std::f64::consts::PI;
        let f: Vec<f64> = (0..16).map(|j| (pi * g.cell_center(j)).cos()).collect();
        let f3: Vec<f64> = f.iter().map(|x| 3.0 * x).collect();
        let a = hminus1_seminorm(&f, g).unwrap();
        let b = hminus1_seminorm(&f3, g).unwrap();
        assert!((b - 3.0 * a).abs() < 1e-12);
    }

    #[test]
    fn gajewski_distance_properties() {
        let g = grid(40);
        let u = Field::from_profile(g, 2, |i, x| {
            0.25 + 0.1 * (std::f64::consts::PI * x).cos() * if i == 0 { 1.0 } else { -1.0 }
        })
        .unwrap();
        let v = Field::from_profile(g, 2, |i, x| {
            0.25 + 0.05 * (2.0 * std::f64::consts::PI * x).cos() * if i == 0 { -1.0 } else { 1.0 }
        })
        .unwrap();
        assert_eq!(gajewski_distance(&u, &u, 1e-6).unwrap(), 0.0);
        let d = gajewski_distance(&u, &v, 1e-6).unwrap();
        assert!(d >= 0.0);
        // quadratic lower bound for fields valued in [0,1]
        let dx = g.dx();
        let mut l2: f64 = 0.0;
        for i in 0..2 {
            for j in 0..40 {
                let diff = u.get(i, j) - v.get(i, j);
                l2 += diff * diff * dx;
            }
        }
        assert!(d >= l2 / 8.0 - 1e-9, "d = {d}, l2/8 = {}", l2 / 8.0);
    }

    #[test]
    fn field_validation_and_means() {
        let g = grid(10);
        assert!(Field::from_profile(g, 2, |_, _| 0.6).is_err());
        let f = Field::from_profile(g, 2, |i, x| {
            0.3 + 0.1 * (std::f64::consts::PI * x).cos() * if i == 0 { 1.0 } else { -1.0 }
        })
        .unwrap();
        let means = f.means();
        // cosine integrates to zero against the midpoint rule exactly by
        // symmetry of the cell centers
        assert!((means[0] - 0.3).abs() < 1e-14);
        assert!((means[1] - 0.3).abs() < 1e-14);
    }
}
