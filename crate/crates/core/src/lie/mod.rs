//! Matrix Lie groups: the five registered groups, their algebras, charts and adjoint maps.
//!
//! Every element is stored as a dense real matrix. SU(2) uses the realification
//! `P + iQ -> [[P, -Q], [Q, P]]`, so all groups share one multiplication path.
//! Algebra coordinates are taken in a Frobenius-orthonormal basis, which makes the
//! coordinate norm equal to the Frobenius norm of the algebra matrix.

mod chart;
mod proximal;

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use nalgebra::{Complex, DMatrix, DVector, Schur};
use serde::{Deserialize, Serialize};

use crate::error::{LieError, Result};

pub use chart::{log_near_identity, logm_generic, sqrtm_denman_beavers};

const SCHUR_MAX_ITER: usize = 10_000;

/// Eigenvalues from a Schur form with a bounded iteration count.
///
/// nalgebra's `complex_eigenvalues` iterates without a cap and can cycle forever on some
/// inputs, so a stalled run is retried on the transpose and on a diagonal similarity,
/// both with the same spectrum. `None` when all three stall.
pub fn eigenvalues(m: &DMatrix<f64>) -> Option<Vec<Complex<f64>>> {
    let n = m.nrows();
    let d = DVector::from_fn(n, |i, _| 1.0 + 0.25 * i as f64);
    let scaled = DMatrix::from_fn(n, n, |i, j| m[(i, j)] * d[i] / d[j]);
    [m.clone(), m.transpose(), scaled].into_iter().find_map(|a| {
        Schur::try_new(a, f64::EPSILON, SCHUR_MAX_ITER).map(|s| s.complex_eigenvalues().iter().copied().collect())
    })
}
pub use proximal::{classify_proximal, spectral_projector, ProximalData, ProximalKind};
pub(crate) use proximal::null_space;

/// Membership residual tolerated for stored elements.
pub const MEMBERSHIP_TOL: f64 = 1e-10;
/// Membership residual tolerated for caller-supplied inputs.
pub const INPUT_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupKind {
    Su2,
    So3,
    Sl2r,
    Sl3r,
    Aff1,
}

impl GroupKind {
    pub const ALL: [GroupKind; 5] = [
        GroupKind::Su2,
        GroupKind::So3,
        GroupKind::Sl2r,
        GroupKind::Sl3r,
        GroupKind::Aff1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GroupKind::Su2 => "su2",
            GroupKind::So3 => "so3",
            GroupKind::Sl2r => "sl2r",
            GroupKind::Sl3r => "sl3r",
            GroupKind::Aff1 => "aff1",
        }
    }

    pub fn spec(self) -> &'static GroupSpec {
        GroupSpec::of(self)
    }

    pub fn is_semisimple(self) -> bool {
        !matches!(self, GroupKind::Aff1)
    }

    pub fn is_compact(self) -> bool {
        matches!(self, GroupKind::Su2 | GroupKind::So3)
    }
}

impl fmt::Display for GroupKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GroupKind {
    type Err = LieError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "su2" => Ok(GroupKind::Su2),
            "so3" => Ok(GroupKind::So3),
            "sl2r" => Ok(GroupKind::Sl2r),
            "sl3r" => Ok(GroupKind::Sl3r),
            "aff1" => Ok(GroupKind::Aff1),
            other => Err(LieError::Usage(format!("unknown group '{other}'"))),
        }
    }
}

/// Immutable description of a registered group and its Lie algebra.
#[derive(Debug)]
pub struct GroupSpec {
    pub kind: GroupKind,
    pub matrix_dim: usize,
    pub algebra_dim: usize,
    /// Frobenius-orthonormal basis of the algebra.
    pub algebra_basis: Vec<DMatrix<f64>>,
    /// `ad_basis[i]` is the matrix of `ad(e_i)` in basis coordinates.
    pub ad_basis: Vec<DMatrix<f64>>,
    /// Largest residual seen when re-expanding brackets of basis elements.
    pub closure_residual: f64,
}

fn mat(rows: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, rows, data)
}

fn realify(p: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    let n = p.nrows();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(p);
    m.view_mut((n, n), (n, n)).copy_from(p);
    m.view_mut((n, 0), (n, n)).copy_from(q);
    m.view_mut((0, n), (n, n)).copy_from(&(-q));
    m
}

/// Build the realified 4x4 matrix of the complex 2x2 matrix `P + iQ`.
pub fn su2_realify(p: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    realify(p, q)
}

fn raw_basis(kind: GroupKind) -> Vec<DMatrix<f64>> {
    let z2 = DMatrix::<f64>::zeros(2, 2);
    match kind {
        GroupKind::Su2 => vec![
            realify(&z2, &mat(2, &[0., 1., 1., 0.])),
            realify(&mat(2, &[0., 1., -1., 0.]), &z2),
            realify(&z2, &mat(2, &[1., 0., 0., -1.])),
        ],
        GroupKind::So3 => vec![
            mat(3, &[0., 0., 0., 0., 0., -1., 0., 1., 0.]),
            mat(3, &[0., 0., 1., 0., 0., 0., -1., 0., 0.]),
            mat(3, &[0., -1., 0., 1., 0., 0., 0., 0., 0.]),
        ],
        GroupKind::Sl2r => vec![
            mat(2, &[1., 0., 0., -1.]),
            mat(2, &[0., 1., 0., 0.]),
            mat(2, &[0., 0., 1., 0.]),
        ],
        GroupKind::Sl3r => {
            let mut out = vec![
                DMatrix::from_diagonal(&DVector::from_row_slice(&[1., -1., 0.])),
                DMatrix::from_diagonal(&DVector::from_row_slice(&[0., 1., -1.])),
            ];
            for (i, j) in [(0, 1), (0, 2), (1, 2), (1, 0), (2, 0), (2, 1)] {
                let mut e = DMatrix::zeros(3, 3);
                e[(i, j)] = 1.0;
                out.push(e);
            }
            out
        }
        GroupKind::Aff1 => vec![mat(2, &[1., 0., 0., 0.]), mat(2, &[0., 1., 0., 0.])],
    }
}

fn frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(b).sum()
}

fn gram_schmidt(raw: Vec<DMatrix<f64>>) -> Vec<DMatrix<f64>> {
    let mut out: Vec<DMatrix<f64>> = Vec::with_capacity(raw.len());
    for mut v in raw {
        for _ in 0..2 {
            for u in &out {
                let c = frob(u, &v);
                v -= u * c;
            }
        }
        let n = v.norm();
        out.push(v / n);
    }
    out
}

impl GroupSpec {
    fn build(kind: GroupKind) -> GroupSpec {
        let basis = gram_schmidt(raw_basis(kind));
        let n = basis.len();
        let matrix_dim = basis[0].nrows();
        let mut ad_basis = Vec::with_capacity(n);
        let mut closure_residual: f64 = 0.0;
        for ei in &basis {
            let mut ad = DMatrix::zeros(n, n);
            for (j, ej) in basis.iter().enumerate() {
                let br = ei * ej - ej * ei;
                let mut re = DMatrix::zeros(matrix_dim, matrix_dim);
                for (k, ek) in basis.iter().enumerate() {
                    let c = frob(ek, &br);
                    ad[(k, j)] = c;
                    re += ek * c;
                }
                closure_residual = closure_residual.max((br - re).norm());
            }
            ad_basis.push(ad);
        }
        GroupSpec {
            kind,
            matrix_dim,
            algebra_dim: n,
            algebra_basis: basis,
            ad_basis,
            closure_residual,
        }
    }

    pub fn of(kind: GroupKind) -> &'static GroupSpec {
        static SPECS: [OnceLock<GroupSpec>; 5] = [
            OnceLock::new(),
            OnceLock::new(),
            OnceLock::new(),
            OnceLock::new(),
            OnceLock::new(),
        ];
        let idx = GroupKind::ALL.iter().position(|k| *k == kind).unwrap();
        SPECS[idx].get_or_init(|| GroupSpec::build(kind))
    }

    /// Algebra matrix with the given coordinates.
    pub fn hat(&self, coords: &DVector<f64>) -> DMatrix<f64> {
        let d = self.matrix_dim;
        let mut m = DMatrix::zeros(d, d);
        for (c, e) in coords.iter().zip(&self.algebra_basis) {
            if *c != 0.0 {
                m += e * *c;
            }
        }
        m
    }

    /// Coordinates of the orthogonal projection of `m` onto the algebra.
    pub fn vee(&self, m: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(self.algebra_dim, self.algebra_basis.iter().map(|e| frob(e, m)))
    }

    /// Distance value used when `Log` is unavailable; it dominates every chart value on
    /// the compact groups.
    pub fn chart_cap(&self) -> f64 {
        match self.kind {
            GroupKind::Su2 => 2.0 * std::f64::consts::PI,
            GroupKind::So3 => std::f64::consts::SQRT_2 * std::f64::consts::PI,
            _ => 10.0,
        }
    }
}

/// A point of one of the registered groups.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupElement {
    kind: GroupKind,
    m: DMatrix<f64>,
}

/// Lie algebra element in basis coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraElement {
    pub kind: GroupKind,
    pub coords: DVector<f64>,
}

impl AlgebraElement {
    pub fn new(kind: GroupKind, coords: DVector<f64>) -> Self {
        assert_eq!(coords.len(), kind.spec().algebra_dim, "coordinate count");
        AlgebraElement { kind, coords }
    }

    pub fn from_slice(kind: GroupKind, c: &[f64]) -> Self {
        Self::new(kind, DVector::from_row_slice(c))
    }

    pub fn zero(kind: GroupKind) -> Self {
        AlgebraElement { kind, coords: DVector::zeros(kind.spec().algebra_dim) }
    }

    pub fn norm(&self) -> f64 {
        self.coords.norm()
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        self.kind.spec().hat(&self.coords)
    }

    pub fn scale(&self, t: f64) -> Self {
        AlgebraElement { kind: self.kind, coords: &self.coords * t }
    }

    pub fn add(&self, other: &Self) -> Self {
        AlgebraElement { kind: self.kind, coords: &self.coords + &other.coords }
    }

    pub fn sub(&self, other: &Self) -> Self {
        AlgebraElement { kind: self.kind, coords: &self.coords - &other.coords }
    }

    /// `[self, other]`.
    pub fn bracket(&self, other: &Self) -> Self {
        AlgebraElement { kind: self.kind, coords: ad(self) * &other.coords }
    }

    pub fn exp(&self) -> GroupElement {
        chart::exp(self)
    }
}

impl GroupElement {
    pub fn identity(kind: GroupKind) -> Self {
        let d = kind.spec().matrix_dim;
        GroupElement { kind, m: DMatrix::identity(d, d) }
    }

    /// Checked constructor: rejects matrices off the group by more than `INPUT_TOL`.
    pub fn new(kind: GroupKind, m: DMatrix<f64>) -> Result<Self> {
        let d = kind.spec().matrix_dim;
        if m.nrows() != d || m.ncols() != d {
            return Err(LieError::Usage(format!(
                "{kind} expects {d}x{d} matrices, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let g = GroupElement { kind, m };
        let r = g.membership_residual();
        if !(r <= INPUT_TOL) {
            return Err(LieError::InvalidElement { residual: r });
        }
        Ok(g)
    }

    pub(crate) fn from_matrix_unchecked(kind: GroupKind, m: DMatrix<f64>) -> Self {
        GroupElement { kind, m }
    }

    /// SU(2) element from the complex matrix `P + iQ`.
    pub fn su2_from_complex(p: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<Self> {
        GroupElement::new(GroupKind::Su2, realify(p, q))
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    pub fn membership_residual(&self) -> f64 {
        let m = &self.m;
        let d = m.nrows();
        if m.iter().any(|x| !x.is_finite()) {
            return f64::INFINITY;
        }
        match self.kind {
            GroupKind::So3 => {
                (m.transpose() * m - DMatrix::identity(d, d)).norm() + (m.determinant() - 1.0).abs()
            }
            GroupKind::Su2 => {
                let orth = (m.transpose() * m - DMatrix::identity(4, 4)).norm();
                let p = m.view((0, 0), (2, 2));
                let q = m.view((2, 0), (2, 2));
                let shape = (p - m.view((2, 2), (2, 2))).norm() + (q + m.view((0, 2), (2, 2))).norm();
                // complex determinant of P + iQ
                let re = p[(0, 0)] * p[(1, 1)] - q[(0, 0)] * q[(1, 1)] - p[(0, 1)] * p[(1, 0)]
                    + q[(0, 1)] * q[(1, 0)];
                let im = p[(0, 0)] * q[(1, 1)] + q[(0, 0)] * p[(1, 1)] - p[(0, 1)] * q[(1, 0)]
                    - q[(0, 1)] * p[(1, 0)];
                orth + shape + (re - 1.0).abs() + im.abs()
            }
            GroupKind::Sl2r | GroupKind::Sl3r => (m.determinant() - 1.0).abs(),
            GroupKind::Aff1 => {
                if m[(0, 0)] <= 0.0 {
                    f64::INFINITY
                } else {
                    m[(1, 0)].abs() + (m[(1, 1)] - 1.0).abs()
                }
            }
        }
    }

    pub fn mul(&self, other: &GroupElement) -> GroupElement {
        debug_assert_eq!(self.kind, other.kind);
        GroupElement { kind: self.kind, m: &self.m * &other.m }
    }

    pub fn inverse(&self) -> GroupElement {
        let m = &self.m;
        let inv = match self.kind {
            GroupKind::So3 | GroupKind::Su2 => m.transpose(),
            GroupKind::Sl2r => {
                let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
                mat(2, &[m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]]) / det
            }
            GroupKind::Aff1 => {
                let s = m[(0, 0)];
                mat(2, &[1.0 / s, -m[(0, 1)] / s, 0.0, 1.0])
            }
            GroupKind::Sl3r => m.clone().try_inverse().expect("SL3 element is invertible"),
        };
        GroupElement { kind: self.kind, m: inv }
    }

    /// `self * h * self^-1`
    pub fn conj(&self, h: &GroupElement) -> GroupElement {
        self.mul(h).mul(&self.inverse())
    }

    /// `self * h * self^-1 * h^-1`
    pub fn comm(&self, h: &GroupElement) -> GroupElement {
        self.mul(h).mul(&self.inverse()).mul(&h.inverse())
    }

    /// Integer power by repeated squaring; negative powers use the inverse.
    pub fn pow(&self, k: i64) -> GroupElement {
        let mut base = if k < 0 { self.inverse() } else { self.clone() };
        let mut e = k.unsigned_abs();
        let mut acc = GroupElement::identity(self.kind);
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&base);
            }
            base = base.mul(&base);
            e >>= 1;
        }
        acc
    }

    pub fn log(&self) -> Result<AlgebraElement> {
        chart::log(self)
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        let d = self.m.nrows();
        (&self.m - DMatrix::<f64>::identity(d, d)).norm() <= tol
    }

    /// Eigenvalues of the matrix, as (re, im) pairs.
    pub fn spectrum(&self) -> Vec<(f64, f64)> {
        eigenvalues(&self.m).unwrap_or_default().iter().map(|z| (z.re, z.im)).collect()
    }

    /// Row-major matrix entries.
    pub fn entries(&self) -> Vec<f64> {
        let d = self.m.nrows();
        let mut out = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                out.push(self.m[(i, j)]);
            }
        }
        out
    }

    pub fn from_entries(kind: GroupKind, entries: &[f64]) -> Result<Self> {
        let d = kind.spec().matrix_dim;
        if entries.len() != d * d {
            return Err(LieError::Usage(format!("{kind} expects {} entries", d * d)));
        }
        GroupElement::new(kind, DMatrix::from_row_slice(d, d, entries))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupOp {
    Mul,
    Inv,
    Conj,
    Comm,
}

/// Checked binary group operation. `Inv` returns `a^-1` and only uses `b` for the group check.
pub fn group_op(a: &GroupElement, b: &GroupElement, op: GroupOp) -> Result<GroupElement> {
    if a.kind != b.kind {
        return Err(LieError::Usage(format!("group mismatch: {} vs {}", a.kind, b.kind)));
    }
    for g in [a, b] {
        let r = g.membership_residual();
        if !(r <= INPUT_TOL) {
            return Err(LieError::InvalidElement { residual: r });
        }
    }
    Ok(match op {
        GroupOp::Mul => a.mul(b),
        GroupOp::Inv => a.inverse(),
        GroupOp::Conj => a.conj(b),
        GroupOp::Comm => a.comm(b),
    })
}

/// Matrix of `Ad_g` acting on algebra coordinates.
pub fn adjoint(g: &GroupElement) -> DMatrix<f64> {
    let spec = g.kind.spec();
    let n = spec.algebra_dim;
    let gi = g.inverse();
    let mut out = DMatrix::zeros(n, n);
    for (j, e) in spec.algebra_basis.iter().enumerate() {
        let c = spec.vee(&(&g.m * e * &gi.m));
        out.set_column(j, &c);
    }
    out
}

/// Matrix of `ad_x` acting on algebra coordinates.
pub fn ad(x: &AlgebraElement) -> DMatrix<f64> {
    let spec = x.kind.spec();
    let n = spec.algebra_dim;
    let mut out = DMatrix::zeros(n, n);
    for (c, a) in x.coords.iter().zip(&spec.ad_basis) {
        if *c != 0.0 {
            out += a * *c;
        }
    }
    out
}

/// Left-invariant distance `|Log(a^-1 b)|`, or `chart_cap + |a^-1 b - I|_F` off the chart.
pub fn distance(a: &GroupElement, b: &GroupElement) -> f64 {
    dist_to_identity(&a.inverse().mul(b))
}

/// `distance(I, x)`.
pub fn dist_to_identity(x: &GroupElement) -> f64 {
    match chart::log(x) {
        Ok(v) => v.norm(),
        Err(_) => {
            let d = x.m.nrows();
            x.kind.spec().chart_cap() + (&x.m - DMatrix::<f64>::identity(d, d)).norm()
        }
    }
}

/// True when `distance` would use the chart rather than the fallback.
pub fn in_chart(x: &GroupElement) -> bool {
    chart::log(x).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bases_are_orthonormal_and_closed() {
        for kind in GroupKind::ALL {
            let spec = kind.spec();
            let n = spec.algebra_dim;
            assert_eq!(n, match kind {
                GroupKind::Sl3r => 8,
                GroupKind::Aff1 => 2,
                _ => 3,
            });
            for i in 0..n {
                for j in 0..n {
                    let g = frob(&spec.algebra_basis[i], &spec.algebra_basis[j]);
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((g - want).abs() < 1e-14, "{kind} gram {i}{j}");
                }
            }
            assert!(spec.closure_residual <= 1e-12, "{kind} closure {}", spec.closure_residual);
        }
    }

    #[test]
    fn sl2r_commutator_example() {
        let a = GroupElement::new(GroupKind::Sl2r, mat(2, &[2., 0., 0., 0.5])).unwrap();
        let b = GroupElement::new(GroupKind::Sl2r, mat(2, &[1., 1., 0., 1.])).unwrap();
        let c = group_op(&a, &b, GroupOp::Comm).unwrap();
        // a b a^-1 = [[1, 4], [0, 1]], then times b^-1 = [[1, -1], [0, 1]]
        assert!((c.matrix() - mat(2, &[1., 3., 0., 1.])).norm() < 1e-15);
    }

    #[test]
    fn group_mismatch_is_usage_error() {
        let a = GroupElement::identity(GroupKind::Sl2r);
        let b = GroupElement::identity(GroupKind::Aff1);
        assert!(matches!(group_op(&a, &b, GroupOp::Mul), Err(LieError::Usage(_))));
    }

    #[test]
    fn off_group_input_is_rejected() {
        let bad = GroupElement::from_matrix_unchecked(GroupKind::Sl2r, mat(2, &[2., 0., 0., 1.]));
        let i = GroupElement::identity(GroupKind::Sl2r);
        assert!(matches!(group_op(&bad, &i, GroupOp::Mul), Err(LieError::InvalidElement { .. })));
    }

    #[test]
    fn self_commutator_is_identity() {
        let g = AlgebraElement::from_slice(GroupKind::Sl3r, &[0.1, -0.2, 0.3, 0.1, 0.0, -0.4, 0.2, 0.05]).exp();
        assert!(g.comm(&g).is_identity(1e-14));
    }

    #[test]
    fn bounded_eigenvalues() {
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let r = DMatrix::from_row_slice(3, 3, &[c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0]);
        let mut e = eigenvalues(&r).unwrap();
        e.sort_by(|a, b| a.im.total_cmp(&b.im));
        assert!((e[0] - Complex::new(c, -s)).norm() < 1e-14);
        assert!((e[1] - Complex::new(1.0, 0.0)).norm() < 1e-14);
        // defective: a Jordan block still returns its double eigenvalue
        let j = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(eigenvalues(&j).unwrap().iter().all(|z| (z - Complex::new(1.0, 0.0)).norm() < 1e-12));
    }

    #[test]
    fn pow_matches_repeated_product() {
        let g = AlgebraElement::from_slice(GroupKind::Sl2r, &[0.1, 0.3, -0.2]).exp();
        let mut acc = GroupElement::identity(GroupKind::Sl2r);
        for _ in 0..7 {
            acc = acc.mul(&g);
        }
        assert!((g.pow(7).matrix() - acc.matrix()).norm() < 1e-13);
        assert!(g.pow(-3).mul(&g.pow(3)).is_identity(1e-13));
    }
}
