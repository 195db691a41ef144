//! Diffusion-matrix algebra: `A(u)`, the symmetric product `HA = h''A`, the
//! mobility `B = A (h'')^{-1}` of the gradient-flow form, and the sampled
//! audit of the positive-definiteness bound
//! `v' (HA) v >= p0 q sum v_i^2/u_i + p0 delta (q')^2/q (sum v_i)^2`.

use crate::entropy::{hessian_into, StatePoint, INTERIOR_MARGIN};
use crate::error::{Error, Result};
use crate::linalg::SquareMat;
use crate::model::{ModelConstants, ModelSpec};

/// `A`, `h''A` and `B = A (h'')^{-1}` evaluated at one state.
#[derive(Clone, Debug)]
pub struct DiffusionMatrices {
    pub a: SquareMat,
    pub ha: SquareMat,
    pub b: SquareMat,
}

pub(crate) fn assemble_a_into(
    model: &ModelSpec,
    u: &[f64],
    vacancy: f64,
    p: &mut [f64],
    hess_chi: &mut SquareMat,
    out: &mut SquareMat,
) {
    let n = u.len();
    model.p_into(u, p);
    model.chi.hessian_into(u, hess_chi);
    let q = model.q.q(vacancy);
    let dq = model.q.dq(vacancy);
    for i in 0..n {
        let uipq = u[i] * p[i] * dq;
        for j in 0..n {
            // dp_i/du_j = p_i * hess_chi_ij; the u_i q prefactor vanishes on
            // the faces where hess_chi may blow up, so guard the product.
            let coupling = if u[i] == 0.0 || q == 0.0 {
                0.0
            } else {
                u[i] * q * p[i] * hess_chi.get(i, j)
            };
            let mut v = uipq + coupling;
            if i == j {
                v += p[i] * q;
            }
            out.set(i, j, v);
        }
    }
}

/// Diffusion matrix `A_ij = d_ij p_i q + u_i p_i q' + u_i q dp_i/du_j`,
/// evaluable on the closed simplex by continuity.
pub fn assemble_a(point: &StatePoint, model: &ModelSpec) -> SquareMat {
    let n = point.n();
    let mut p = vec![0.0; n];
    let mut hess_chi = SquareMat::zeros(n);
    let mut a = SquareMat::zeros(n);
    assemble_a_into(model, point.u(), point.vacancy(), &mut p, &mut hess_chi, &mut a);
    a
}

/// `h''(u) A(u)`; symmetric up to round-off on the interior.
pub fn assemble_ha(point: &StatePoint, model: &ModelSpec) -> Result<SquareMat> {
    if !point.is_interior(INTERIOR_MARGIN) {
        return Err(Error::BoundaryState("HA needs a strictly interior point".into()));
    }
    let a = assemble_a(point, model);
    let mut h = SquareMat::zeros(point.n());
    hessian_into(model, point.u(), point.vacancy(), &mut h);
    Ok(h.matmul(&a))
}

/// `B = A (h'')^{-1}` through a linear solve against the Hessian, never an
/// explicit inverse: with h'' symmetric, solve h'' Y = A' and return Y'.
pub fn assemble_b(point: &StatePoint, model: &ModelSpec) -> Result<SquareMat> {
    if !point.is_interior(INTERIOR_MARGIN) {
        return Err(Error::BoundaryState("B needs a strictly interior point".into()));
    }
    let a = assemble_a(point, model);
    let mut h = SquareMat::zeros(point.n());
    hessian_into(model, point.u(), point.vacancy(), &mut h);
    Ok(h.solve_mat(&a.transpose())?.transpose())
}

pub fn assemble_all(point: &StatePoint, model: &ModelSpec) -> Result<DiffusionMatrices> {
    let a = assemble_a(point, model);
    let mut h = SquareMat::zeros(point.n());
    if !point.is_interior(INTERIOR_MARGIN) {
        return Err(Error::BoundaryState("matrix products need an interior point".into()));
    }
    hessian_into(model, point.u(), point.vacancy(), &mut h);
    let ha = h.matmul(&a);
    let b = h.solve_mat(&a.transpose())?.transpose();
    Ok(DiffusionMatrices { a, ha, b })
}

/// One evaluation of the lower bound: quadratic form on the left, the
/// structural right side, and the pass flag with relative slack.
#[derive(Clone, Copy, Debug)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// Audit `v' (HA) v` against
/// `p0 q(v) sum v_i^2/u_i + p0 delta (q')^2/q (sum v_i)^2` at one point.
pub fn verify_lower_bound(
    point: &StatePoint,
    v: &[f64],
    model: &ModelSpec,
    constants: &ModelConstants,
) -> Result<BoundCheck> {
    let ha = assemble_ha(point, model)?;
    let lhs = ha.quadratic_form(v);
    let s = point.vacancy();
    let q = model.q.q(s);
    let dq = model.q.dq(s);
    let mut sum_sq = 0.0;
    let mut sum_v = 0.0;
    for (vi, ui) in v.iter().zip(point.u().iter()) {
        sum_sq += vi * vi / ui;
        sum_v += vi;
    }
    // (q')^2 / q through the logarithmic derivative so the vanishing family
    // underflows to 0 instead of NaN
    let rhs = constants.p0 * q * sum_sq
        + constants.p0 * constants.delta * model.q.dlog_q(s) * dq * sum_v * sum_v;
    let pass = lhs >= rhs - 1e-9 * (1.0 + lhs.abs());
    Ok(BoundCheck { lhs, rhs, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{compute_constants, ModelSpec};
    use crate::sampling::{direction_samples, SimplexSampler};

    fn skt() -> ModelSpec {
        ModelSpec::by_name("skt-volume", 2).unwrap()
    }

    fn ion2() -> ModelSpec {
        ModelSpec::by_name("ion-transport", 2).unwrap()
    }

    fn quarter() -> StatePoint {
        StatePoint::new(vec![0.25, 0.25]).unwrap()
    }

    #[test]
    fn a_matches_printed_matrix() {
        // the volume-filling example in closed form:
        // A11 = u1(1-u1-u2) + (u1+u2)(1-u2), A12 = u1, etc.
        let a = assemble_a(&quarter(), &skt());
        for (i, j, v) in [(0, 0, 0.5), (0, 1, 0.25), (1, 0, 0.25), (1, 1, 0.5)] {
            assert!((a.get(i, j) - v).abs() < 1e-12, "a[{i}{j}] = {}", a.get(i, j));
        }
        // and across samples against the closed form
        let m = skt();
        let mut sampler = SimplexSampler::new(2, 1e-6, 9);
        for u in sampler.take(500) {
            let p = StatePoint::new(u.clone()).unwrap();
            let a = assemble_a(&p, &m);
            let (u1, u2) = (u[0], u[1]);
            let u3 = 1.0 - u1 - u2;
            assert!((a.get(0, 0) - (u1 * u3 + (u1 + u2) * (1.0 - u2))).abs() < 1e-12);
            assert!((a.get(0, 1) - u1).abs() < 1e-12);
            assert!((a.get(1, 0) - u2).abs() < 1e-12);
            assert!((a.get(1, 1) - (u2 * u3 + (u1 + u2) * (1.0 - u1))).abs() < 1e-12);
        }
    }

    #[test]
    fn a_for_unit_occupancy() {
        // p = 1, q = s: A_ij = d_ij u3 + u_i
        let a = assemble_a(&quarter(), &ion2());
        for (i, j, v) in [(0, 0, 0.75), (0, 1, 0.25), (1, 0, 0.25), (1, 1, 0.75)] {
            assert!((a.get(i, j) - v).abs() < 1e-12);
        }
    }

    #[test]
    fn a_degenerates_at_vertex() {
        // at u = (1, 0) the volume-filling matrix has a singular direction
        let p = StatePoint::new(vec![1.0, 0.0]).unwrap();
        let a = assemble_a(&p, &skt());
        assert!(a.as_slice().iter().all(|x| x.is_finite()));
        let det = a.get(0, 0) * a.get(1, 1) - a.get(0, 1) * a.get(1, 0);
        assert!(det.abs() < 1e-12, "det = {det}");
    }

    #[test]
    fn ha_values_and_symmetry() {
        let ha = assemble_ha(&quarter(), &skt()).unwrap();
        for (i, j, v) in [(0, 0, 5.0), (0, 1, 4.0), (1, 0, 4.0), (1, 1, 5.0)] {
            assert!((ha.get(i, j) - v).abs() < 1e-12);
        }
        let ha = assemble_ha(&quarter(), &ion2()).unwrap();
        for (i, j, v) in [(0, 0, 5.0), (0, 1, 3.0), (1, 0, 3.0), (1, 1, 5.0)] {
            assert!((ha.get(i, j) - v).abs() < 1e-12);
        }
        assert!(assemble_ha(&StatePoint::new(vec![1.0, 0.0]).unwrap(), &skt()).is_err());
    }

    #[test]
    fn ha_symmetric_on_samples() {
        for m in [ion2(), skt(), ModelSpec::by_name("exp-q:1", 2).unwrap()] {
            let mut sampler = SimplexSampler::new(2, 1e-4, 21);
            for u in sampler.take(2000) {
                let p = StatePoint::new(u).unwrap();
                let ha = assemble_ha(&p, &m).unwrap();
                let asym = ha.max_asymmetry();
                assert!(
                    asym <= 1e-12 * ha.max_abs().max(1.0),
                    "{}: asymmetry {asym} at {:?}",
                    m.name,
                    p.u()
                );
            }
        }
    }

    #[test]
    fn b_is_diagonal_for_volume_filling_example() {
        let b = assemble_b(&quarter(), &skt()).unwrap();
        // diag(u_i (u1+u2)(1-u1-u2)) = diag(0.0625)
        for (i, j) in [(0, 0), (1, 1)] {
            assert!((b.get(i, j) - 0.0625).abs() < 1e-12);
        }
        for (i, j) in [(0, 1), (1, 0)] {
            assert!(b.get(i, j).abs() < 1e-12);
        }
    }

    #[test]
    fn b_consistency_and_psd() {
        // B h'' = A within 1e-12 of the product scale, B symmetric PSD, for
        // sampled points
        for m in [ion2(), skt()] {
            let mut sampler = SimplexSampler::new(2, 1e-4, 31);
            for u in sampler.take(1000) {
                let p = StatePoint::new(u).unwrap();
                let b = assemble_b(&p, &m).unwrap();
                let a = assemble_a(&p, &m);
                let h = crate::entropy::entropy_hessian(&p, &m).unwrap();
                let bh = b.matmul(&h);
                let scale = (h.max_abs() * b.max_abs()).max(a.max_abs()).max(1.0);
                for i in 0..2 {
                    for j in 0..2 {
                        assert!(
                            (bh.get(i, j) - a.get(i, j)).abs() <= 1e-12 * scale,
                            "{}: B h'' != A at {:?}",
                            m.name,
                            p.u()
                        );
                    }
                }
                // symmetry of B is a consequence of the symmetry of h''A
                assert!(b.max_asymmetry() <= 1e-12 * scale);
                assert!(b.min_sym_eigenvalue() >= -1e-10);
            }
        }
    }

    #[test]
    fn b_eigenvalues_vanish_toward_full_packing() {
        // along u = (t, 1-t-eps) with eps -> 0 the smallest eigenvalue of B
        // tends to zero
        let m = skt();
        let mut prev = f64::INFINITY;
        for k in 1..=6 {
            let eps = 10f64.powi(-k);
            let p = StatePoint::new(vec![0.4, 0.6 - eps]).unwrap();
            let b = assemble_b(&p, &m).unwrap();
            let min = b.min_sym_eigenvalue();
            assert!(min >= -1e-12);
            assert!(min <= prev + 1e-12);
            prev = min;
        }
        assert!(prev < 1e-6, "min eigenvalue {prev}");
    }

    #[test]
    fn lower_bound_example_and_zero_vector() {
        let m = ion2();
        let c = compute_constants(&m);
        let chk = verify_lower_bound(&quarter(), &[1.0, 1.0], &m, &c).unwrap();
        assert!((chk.lhs - 16.0).abs() < 1e-12);
        assert!((chk.rhs - 8.0).abs() < 1e-12);
        assert!(chk.pass);
        let z = verify_lower_bound(&quarter(), &[0.0, 0.0], &m, &c).unwrap();
        assert_eq!(z.lhs, 0.0);
        assert_eq!(z.rhs, 0.0);
        assert!(z.pass);
    }

    #[test]
    fn lower_bound_monte_carlo() {
        // the bound holds at sampled (u, v) for models with positive p0
        let mut per_species = ModelSpec::by_name("power-q:2", 2).unwrap();
        per_species.chi = crate::model::build_chi_per_species(vec![
            crate::model::PTilde::with_derivative(
                std::sync::Arc::new(|s| 1.0 + s),
                std::sync::Arc::new(|_| 1.0),
            ),
            crate::model::PTilde::with_derivative(
                std::sync::Arc::new(|s| 1.0 + 0.5 * s * s),
                std::sync::Arc::new(|s| s),
            ),
        ])
        .unwrap();
        per_species.name = "power-q:2+per-species".into();
        for m in [ion2(), per_species] {
            let c = compute_constants(&m);
            assert!(!c.degenerate_c0, "{}", m.name);
            let mut sampler = SimplexSampler::new(2, 1e-4, 41);
            let dirs = direction_samples(2, 1000, 43);
            for (u, v) in sampler.take(1000).into_iter().zip(dirs) {
                let p = StatePoint::new(u).unwrap();
                let chk = verify_lower_bound(&p, &v, &m, &c).unwrap();
                assert!(
                    chk.pass,
                    "{}: lhs {} < rhs {} at u = {:?}, v = {:?}",
                    m.name,
                    chk.lhs,
                    chk.rhs,
                    p.u(),
                    v
                );
            }
        }
    }
}
