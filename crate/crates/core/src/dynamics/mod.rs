//! Iterated commutator maps `phi_g(h) = g h g^-1 h^-1` for (complex) 1-proximal `g`.
//!
//! Iterates are carried as deviations `X = h - I`, using
//! `phi_g(I + X) - I = (g X g^-1 - X)(I + X)^-1`, so relative precision survives long
//! after `h` is indistinguishable from the identity in absolute terms.

mod psi;

pub use psi::{
    assemble_psi, cube_grid, psi_jacobian, select_k_subsequence, verify_psi_limit, PsiFactor, PsiLimitRow, PsiMode, PsiSearch,
    PsiSpec, Slice,
};

use nalgebra::{Complex, DMatrix, DVector};
use serde::Serialize;

use crate::error::{LieError, Result};
use crate::lie::{
    classify_proximal, dist_to_identity, log_near_identity, spectral_projector, AlgebraElement, GroupElement,
    ProximalData, ProximalKind,
};
use crate::sampling;

/// `d(h, I)` allowed for the starting point.
pub const BASIN_RADIUS: f64 = 0.2;
/// Iteration stops once `|Log phi^k(h)|` falls below this.
pub const STOP_NORM: f64 = 1e-250;
/// Extrapolation starts at the first iterate below this norm.
pub const FIT_START: f64 = 1e-4;
const FIT_WINDOW: usize = 5;

/// One step of the commutator map in deviation form.
pub fn phi_deviation(g: &DMatrix<f64>, g_inv: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    let d = x.nrows();
    let y = g * x * g_inv - x;
    let ipx = DMatrix::<f64>::identity(d, d) + x;
    // X' = Y (I + X)^-1, solved as (I + X)^T X'^T = Y^T
    match ipx.transpose().lu().solve(&y.transpose()) {
        Some(t) => t.transpose(),
        None => DMatrix::from_element(d, d, f64::NAN),
    }
}

/// `phi_g^k(h) - I` for the given deviation of `h`.
pub fn iterate_deviation(g: &GroupElement, x0: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let gm = g.matrix();
    let gi = g.inverse().into_matrix();
    let mut x = x0.clone();
    for _ in 0..k {
        x = phi_deviation(gm, &gi, &x);
    }
    x
}

/// Identification of L(g) with R (real case) or C (complex case).
#[derive(Clone, Debug)]
pub struct LineCoords {
    /// Projector onto L(g) along the other generalized eigenspaces of `Ad_g - Id`.
    pub projector: DMatrix<f64>,
    /// Columns `e` and `J e` (complex case) or `e` alone, in algebra coordinates.
    pub frame: DMatrix<f64>,
    pub complex: bool,
}

impl LineCoords {
    pub fn new(g: &GroupElement, prox: &ProximalData) -> Result<Self> {
        let projector = spectral_projector(g, prox)
            .ok_or_else(|| LieError::Regime("no spectral projector for this element".into()))?;
        let l = &prox.eigen_plane;
        let frame = match &prox.complex_structure {
            Some(j) => {
                let e = l.column(0).into_owned();
                let je = l * (j * DVector::from_column_slice(&[1.0, 0.0]));
                DMatrix::from_columns(&[e, je])
            }
            None => l.clone(),
        };
        Ok(LineCoords { projector, frame, complex: prox.complex_structure.is_some() })
    }

    /// Complex coordinate of the L(g) component of `v`.
    pub fn coord(&self, v: &DVector<f64>) -> Complex<f64> {
        let p = &self.projector * v;
        let c = self
            .frame
            .clone()
            .svd(true, true)
            .solve(&p, 1e-14)
            .expect("svd solve");
        if self.complex {
            Complex::new(c[0], c[1])
        } else {
            Complex::new(c[0], 0.0)
        }
    }

    /// Vector of L(g) with complex coordinate `z`.
    pub fn vector(&self, z: Complex<f64>) -> DVector<f64> {
        if self.complex {
            self.frame.column(0) * z.re + self.frame.column(1) * z.im
        } else {
            self.frame.column(0) * z.re
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Iterate {
    pub k: usize,
    pub norm: f64,
    /// `norm_k / norm_{k-1}`; NaN at k = 0.
    pub ratio: f64,
    /// Angle between `Log phi^k(h)` and L(g).
    pub angle: f64,
    #[serde(skip)]
    pub log: DVector<f64>,
}

#[derive(Clone, Debug)]
pub struct DynamicsReport {
    pub g: GroupElement,
    pub h: GroupElement,
    pub prox: ProximalData,
    pub iterates: Vec<Iterate>,
    /// `v_g(h)` in algebra coordinates.
    pub v_estimate: AlgebraElement,
    /// `v_g(h)` as a complex coordinate on L(g).
    pub v_coord: Complex<f64>,
    /// `|Log phi^k(h) - s^k v| / |s|^k` per iterate.
    pub convergence_errors: Vec<f64>,
    /// First k after which the convergence errors keep decreasing.
    pub k0: usize,
    pub fit_window: (usize, usize),
    pub coords: LineCoords,
}

fn angle_to(prox: &ProximalData, v: &DVector<f64>) -> f64 {
    let l = &prox.eigen_plane;
    let par = l.transpose() * v;
    let perp = v - l * &par;
    perp.norm().atan2(par.norm())
}

/// Least squares for `u_k = v + s^k w` over complex data.
fn fit_v(us: &[Complex<f64>], sk: &[Complex<f64>]) -> Complex<f64> {
    // normal equations of the 2-parameter complex model
    let n = us.len() as f64;
    let s1: Complex<f64> = sk.iter().sum();
    let s1c: Complex<f64> = sk.iter().map(|z| z.conj()).sum();
    let s2: f64 = sk.iter().map(|z| z.norm_sqr()).sum();
    let b1: Complex<f64> = us.iter().sum();
    let b2: Complex<f64> = us.iter().zip(sk).map(|(u, z)| z.conj() * u).sum();
    // [n, s1; s1c, s2] [v; w] = [b1; b2]
    let det = Complex::new(n * s2, 0.0) - s1 * s1c;
    if det.norm() < 1e-300 || us.len() < 2 {
        return us.last().copied().unwrap_or_default();
    }
    (b1 * s2 - s1 * b2) / det
}

/// Iterate `phi_g` from `h` and estimate `v_g(h) = lim Log phi^k(h) / s^k`.
pub fn run_dynamics(g: &GroupElement, h: &GroupElement, k_max: usize) -> Result<DynamicsReport> {
    if g.kind() != h.kind() {
        return Err(LieError::Usage("g and h lie in different groups".into()));
    }
    let kind = g.kind();
    let prox = classify_proximal(g);
    if prox.kind == ProximalKind::Neither {
        return Err(LieError::Regime(format!(
            "g is not (complex) 1-proximal{}",
            if prox.degenerate { " (degenerate dominance)" } else { "" }
        )));
    }
    if prox.s.norm() >= 1.0 {
        return Err(LieError::Regime(format!("|s(g)| = {:.6} is not below 1", prox.s.norm())));
    }
    let dh = dist_to_identity(h);
    if dh > BASIN_RADIUS {
        return Err(LieError::Basin(format!("d(h, I) = {dh:.4} exceeds {BASIN_RADIUS}")));
    }
    let coords = LineCoords::new(g, &prox)?;
    let d = kind.spec().matrix_dim;
    let gm = g.matrix();
    let gi = g.inverse().into_matrix();
    let mut x = h.matrix() - DMatrix::<f64>::identity(d, d);
    let mut iterates: Vec<Iterate> = Vec::new();
    for k in 0..=k_max {
        if k > 0 {
            x = phi_deviation(gm, &gi, &x);
        }
        let log = match log_near_identity(kind, &x) {
            Ok(v) if v.coords.iter().all(|c| c.is_finite()) => v.coords,
            _ => return Err(LieError::Basin(format!("iterate {k} left the chart"))),
        };
        let norm = log.norm();
        if let Some(first) = iterates.first() {
            if norm > 2.0 * first.norm.max(1e-300) && k >= 2 {
                return Err(LieError::Basin(format!(
                    "iterate {k} grew to {norm:.3e} from {:.3e}",
                    first.norm
                )));
            }
        }
        let ratio = iterates.last().map(|p| norm / p.norm).unwrap_or(f64::NAN);
        let angle = if norm > 0.0 { angle_to(&prox, &log) } else { 0.0 };
        iterates.push(Iterate { k, norm, ratio, angle, log });
        if norm < STOP_NORM {
            break;
        }
    }
    let s = prox.s;
    if iterates[0].norm == 0.0 {
        let zero = AlgebraElement::zero(kind);
        return Ok(DynamicsReport {
            g: g.clone(),
            h: h.clone(),
            prox,
            convergence_errors: vec![0.0; iterates.len()],
            iterates,
            v_estimate: zero,
            v_coord: Complex::new(0.0, 0.0),
            k0: 0,
            fit_window: (0, 0),
            coords,
        });
    }
    let start = iterates
        .iter()
        .position(|it| it.norm < FIT_START)
        .ok_or_else(|| LieError::Basin(format!("no iterate below {FIT_START:e} within {k_max} steps")))?;
    let end = (start + FIT_WINDOW).min(iterates.len() - 1);
    let mut us = Vec::new();
    let mut sks = Vec::new();
    for it in &iterates[start..=end] {
        let sk = s.powu(it.k as u32);
        us.push(coords.coord(&it.log) / sk);
        sks.push(sk);
    }
    let v_coord = fit_v(&us, &sks);
    let v = coords.vector(v_coord);
    let convergence_errors: Vec<f64> = iterates
        .iter()
        .map(|it| {
            let sk = s.powu(it.k as u32);
            (&it.log - coords.vector(sk * v_coord)).norm() / sk.norm()
        })
        .collect();
    let mut k0 = convergence_errors.len().saturating_sub(1);
    while k0 > 0 && convergence_errors[k0 - 1] >= convergence_errors[k0] {
        k0 -= 1;
    }
    Ok(DynamicsReport {
        g: g.clone(),
        h: h.clone(),
        prox,
        iterates,
        v_estimate: AlgebraElement::new(kind, v),
        v_coord,
        convergence_errors,
        k0,
        fit_window: (start, end),
        coords,
    })
}

/// Relative residual of `v_g(phi_g(h)) = s v_g(h)`.
pub fn v_functional_residual(g: &GroupElement, h: &GroupElement, k_max: usize) -> Result<f64> {
    let a = run_dynamics(g, h, k_max)?;
    let b = run_dynamics(g, &g.comm(h), k_max)?;
    let sv = a.coords.vector(a.prox.s * a.v_coord);
    Ok((&b.v_estimate.coords - &sv).norm() / sv.norm())
}

/// Probes `h = Exp(t xi)` with unit `xi` in L(g) and `t = 1e-3`; returns the largest
/// `|v_g(h) - t xi| / t`.
pub fn estimate_dv_identity(g: &GroupElement, probe_count: usize, seed: u64) -> Result<f64> {
    estimate_dv_at(g, probe_count, seed, 1e-3)
}

pub fn estimate_dv_at(g: &GroupElement, probe_count: usize, seed: u64, t: f64) -> Result<f64> {
    use rand::Rng;
    let prox = classify_proximal(g);
    let coords = LineCoords::new(g, &prox)?;
    let mut rng = sampling::rng(seed);
    let mut worst: f64 = 0.0;
    for i in 0..probe_count {
        let z = if coords.complex {
            let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            Complex::new(a.cos(), a.sin())
        } else {
            Complex::new(if i % 2 == 0 { 1.0 } else { -1.0 }, 0.0)
        };
        let xi = coords.vector(z);
        let xi = &xi / xi.norm();
        let h = AlgebraElement::new(g.kind(), &xi * t).exp();
        let rep = run_dynamics(g, &h, 400)?;
        worst = worst.max((&rep.v_estimate.coords - &xi * t).norm() / t);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::GroupKind;

    fn diag_sl2(a: f64) -> GroupElement {
        GroupElement::new(GroupKind::Sl2r, DMatrix::from_row_slice(2, 2, &[a, 0.0, 0.0, 1.0 / a])).unwrap()
    }

    #[test]
    fn identity_start_stays_put() {
        let g = diag_sl2(1.2);
        let rep = run_dynamics(&g, &GroupElement::identity(GroupKind::Sl2r), 10).unwrap();
        assert!(rep.iterates.iter().all(|it| it.norm == 0.0));
        assert_eq!(rep.v_estimate.norm(), 0.0);
    }

    #[test]
    fn deviation_form_matches_group_commutator() {
        let g = diag_sl2(1.2);
        let h = AlgebraElement::from_slice(GroupKind::Sl2r, &[0.02, -0.03, 0.01]).exp();
        let x = h.matrix() - DMatrix::<f64>::identity(2, 2);
        let direct = g.comm(&g.comm(&h));
        let dev = iterate_deviation(&g, &x, 2);
        assert!((direct.matrix() - DMatrix::<f64>::identity(2, 2) - dev).norm() < 1e-15);
    }

    #[test]
    fn ratio_tends_to_s() {
        let g = diag_sl2(1.2);
        let h = AlgebraElement::from_slice(GroupKind::Sl2r, &[0.02, -0.03, 0.01]).exp();
        let rep = run_dynamics(&g, &h, 40).unwrap();
        assert!((rep.iterates[30].ratio - 0.44).abs() < 1e-3);
        assert!(rep.v_estimate.norm() > 0.0);
    }

    #[test]
    fn far_start_is_rejected() {
        let g = diag_sl2(1.2);
        let h = AlgebraElement::from_slice(GroupKind::Sl2r, &[0.5, 0.0, 0.0]).exp();
        assert!(matches!(run_dynamics(&g, &h, 10), Err(LieError::Basin(_))));
        assert!(matches!(
            run_dynamics(&GroupElement::identity(GroupKind::Sl2r), &h, 10),
            Err(LieError::Regime(_))
        ));
    }

    #[test]
    fn complex_case_functional_equation() {
        let g = AlgebraElement::from_slice(GroupKind::So3, &[0.0, 0.0, std::f64::consts::SQRT_2 * std::f64::consts::PI / 6.0]).exp();
        let h = AlgebraElement::from_slice(GroupKind::So3, &[0.03, 0.01, -0.02]).exp();
        let r = v_functional_residual(&g, &h, 300).unwrap();
        assert!(r < 1e-6, "{r}");
    }
}
