use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use super::{adjoint, GroupElement};

/// Relative modulus gap below which dominance is treated as degenerate.
pub const DOMINANCE_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProximalKind {
    OneProximal,
    C1Proximal,
    Neither,
}

/// Spectral data of `Ad_g - Id`.
#[derive(Clone, Debug)]
pub struct ProximalData {
    pub kind: ProximalKind,
    /// Dominant eigenvalue; the branch with positive imaginary part in the complex case.
    pub s: Complex<f64>,
    /// Orthonormal basis of L(g) as columns (one column, or two in the complex case).
    pub eigen_plane: DMatrix<f64>,
    /// J on L(g) in the `eigen_plane` basis, J^2 = -Id.
    pub complex_structure: Option<DMatrix<f64>>,
    /// Second-largest over largest eigenvalue modulus, counting a conjugate pair once.
    pub spectral_gap: f64,
    /// True when the top moduli tie within `DOMINANCE_TOL`.
    pub degenerate: bool,
    /// Eigenvalues of `Ad_g - Id`, sorted by decreasing modulus.
    pub eigenvalues: Vec<Complex<f64>>,
}

impl ProximalData {
    /// g is 1-proximal with |s| < 1.
    pub fn in_pi(&self) -> bool {
        self.kind == ProximalKind::OneProximal && self.s.norm() < 1.0
    }

    /// g is C-1-proximal with |s| < 1.
    pub fn in_pi_c1(&self) -> bool {
        self.kind == ProximalKind::C1Proximal && self.s.norm() < 1.0
    }

    /// J as an operator on algebra coordinates: `B J B^T`, zero off L(g).
    pub fn j_full(&self) -> Option<DMatrix<f64>> {
        self.complex_structure
            .as_ref()
            .map(|j| &self.eigen_plane * j * self.eigen_plane.transpose())
    }

    /// `s^k` acting on vectors of L(g): multiplication by a complex scalar via J.
    pub fn complex_scale(&self, c: Complex<f64>, v: &nalgebra::DVector<f64>) -> nalgebra::DVector<f64> {
        match self.j_full() {
            Some(j) => v * c.re + (j * v) * c.im,
            None => v * c.re,
        }
    }
}

/// Columns spanning the `dim` smallest right singular directions of `a`.
pub(crate) fn null_space(a: &DMatrix<f64>, dim: usize) -> DMatrix<f64> {
    let n = a.ncols();
    let svd = a.clone().svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let mut out = DMatrix::zeros(n, dim);
    for (c, &i) in idx.iter().take(dim).enumerate() {
        out.set_column(c, &vt.row(i).transpose());
    }
    out
}

fn sorted_eigs(m: &DMatrix<f64>) -> Option<Vec<Complex<f64>>> {
    let mut eigs = super::eigenvalues(m)?;
    eigs.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(b.im.total_cmp(&a.im)));
    Some(eigs)
}

/// Classify `g` by the dominant eigenvalue of `Ad_g - Id`.
pub fn classify_proximal(g: &GroupElement) -> ProximalData {
    let adm = adjoint(g);
    let n = adm.nrows();
    let m = &adm - DMatrix::<f64>::identity(n, n);
    let Some(eigs) = sorted_eigs(&m) else {
        return ProximalData {
            kind: ProximalKind::Neither,
            s: Complex::new(0.0, 0.0),
            eigen_plane: DMatrix::zeros(n, 0),
            complex_structure: None,
            spectral_gap: f64::NAN,
            degenerate: true,
            eigenvalues: Vec::new(),
        };
    };
    let top = eigs[0].norm();
    let scale = m.norm().max(1e-300);
    let neither = |degenerate: bool, gap: f64| ProximalData {
        kind: ProximalKind::Neither,
        s: eigs[0],
        eigen_plane: DMatrix::zeros(n, 0),
        complex_structure: None,
        spectral_gap: gap,
        degenerate,
        eigenvalues: eigs.clone(),
    };
    if top <= 1e-14 * scale.max(1.0) {
        return neither(true, 1.0);
    }
    let is_real = eigs[0].im.abs() <= 1e-9 * top;
    if is_real {
        let s = eigs[0].re;
        let second = eigs.get(1).map(|z| z.norm()).unwrap_or(0.0);
        let gap = second / top;
        if gap >= 1.0 - DOMINANCE_TOL {
            return neither(true, gap);
        }
        let shifted = &m - DMatrix::<f64>::identity(n, n) * s;
        let plane = null_space(&shifted, 1);
        ProximalData {
            kind: ProximalKind::OneProximal,
            s: Complex::new(s, 0.0),
            eigen_plane: plane,
            complex_structure: None,
            spectral_gap: gap,
            degenerate: false,
            eigenvalues: eigs,
        }
    } else {
        let third = eigs.get(2).map(|z| z.norm()).unwrap_or(0.0);
        let gap = third / top;
        let paired = eigs.len() >= 2 && (eigs[1] - eigs[0].conj()).norm() <= 1e-8 * top;
        if !paired || gap >= 1.0 - DOMINANCE_TOL {
            return neither(true, gap);
        }
        let s = if eigs[0].im > 0.0 { eigs[0] } else { eigs[0].conj() };
        let id = DMatrix::<f64>::identity(n, n);
        let quad = &m * &m - &m * (2.0 * s.re) + id * s.norm_sqr();
        let plane = null_space(&quad, 2);
        let ml = plane.transpose() * &m * &plane;
        let j = (ml - DMatrix::<f64>::identity(2, 2) * s.re) / s.im;
        ProximalData {
            kind: ProximalKind::C1Proximal,
            s,
            eigen_plane: plane,
            complex_structure: Some(j),
            spectral_gap: gap,
            degenerate: false,
            eigenvalues: eigs,
        }
    }
}

/// Spectral projector of `Ad_g - Id` onto L(g) along the sum of the other generalized
/// eigenspaces. Built from right and left invariant subspaces.
pub fn spectral_projector(g: &GroupElement, data: &ProximalData) -> Option<DMatrix<f64>> {
    let adm = adjoint(g);
    let n = adm.nrows();
    let m = &adm - DMatrix::<f64>::identity(n, n);
    let mt = m.transpose();
    let id = DMatrix::<f64>::identity(n, n);
    let (right, left) = match data.kind {
        ProximalKind::OneProximal => {
            let s = data.s.re;
            (null_space(&(&m - &id * s), 1), null_space(&(&mt - &id * s), 1))
        }
        ProximalKind::C1Proximal => {
            let s = data.s;
            let q = |a: &DMatrix<f64>| a * a - a * (2.0 * s.re) + &id * s.norm_sqr();
            (null_space(&q(&m), 2), null_space(&q(&mt), 2))
        }
        ProximalKind::Neither => return None,
    };
    let core = (left.transpose() * &right).try_inverse()?;
    Some(&right * core * left.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::{AlgebraElement, GroupKind};

    #[test]
    fn sl2r_diagonal_is_one_proximal() {
        let g = GroupElement::new(
            GroupKind::Sl2r,
            DMatrix::from_row_slice(2, 2, &[1.2, 0.0, 0.0, 1.0 / 1.2]),
        )
        .unwrap();
        let p = classify_proximal(&g);
        assert_eq!(p.kind, ProximalKind::OneProximal);
        assert!((p.s.re - 0.44).abs() < 1e-12);
        assert!(p.in_pi());
    }

    #[test]
    fn so3_rotation_is_c1_proximal() {
        let theta = std::f64::consts::PI / 6.0;
        let g = AlgebraElement::from_slice(GroupKind::So3, &[0.0, 0.0, theta * std::f64::consts::SQRT_2]).exp();
        let p = classify_proximal(&g);
        assert_eq!(p.kind, ProximalKind::C1Proximal);
        let want = Complex::new(theta.cos() - 1.0, theta.sin());
        assert!((p.s - want).norm() < 1e-12);
        assert!((p.s.norm() - 2.0 * (theta / 2.0).sin()).abs() < 1e-12);
        assert!(p.in_pi_c1());
        let j = p.complex_structure.unwrap();
        assert!((&j * &j + DMatrix::<f64>::identity(2, 2)).norm() < 1e-9);
    }

    #[test]
    fn identity_is_neither() {
        let p = classify_proximal(&GroupElement::identity(GroupKind::Sl3r));
        assert_eq!(p.kind, ProximalKind::Neither);
        assert!(p.degenerate);
    }

    #[test]
    fn projector_is_idempotent_and_commutes() {
        let g = AlgebraElement::from_slice(GroupKind::Sl3r, &[0.3, 0.1, 0.2, -0.1, 0.05, 0.1, 0.0, -0.2]).exp();
        let p = classify_proximal(&g);
        assert_ne!(p.kind, ProximalKind::Neither);
        let proj = spectral_projector(&g, &p).unwrap();
        assert!((&proj * &proj - &proj).norm() < 1e-9);
        let m = adjoint(&g) - DMatrix::<f64>::identity(8, 8);
        assert!((&m * &proj - &proj * &m).norm() < 1e-9);
    }
}
