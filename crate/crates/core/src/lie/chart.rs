use std::f64::consts::PI;

use nalgebra::DMatrix;

use super::{AlgebraElement, GroupElement, GroupKind};
use crate::error::{LieError, Result};

/// Elements whose rotation angle exceeds this are outside the principal chart.
const ANGLE_LIMIT: f64 = PI - 1e-6;

/// sin(x)/x with a series near zero.
fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0 + x.powi(4) / 120.0
    } else {
        x.sin() / x
    }
}

/// sinh(x)/x with a series near zero.
fn sinhc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 + x * x / 6.0 + x.powi(4) / 120.0
    } else {
        x.sinh() / x
    }
}

/// (1 - cos x)/x^2 with a series near zero.
fn cosc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        0.5 - x * x / 24.0 + x.powi(4) / 720.0
    } else {
        (1.0 - x.cos()) / (x * x)
    }
}

fn chart_error(m: &DMatrix<f64>) -> LieError {
    LieError::Chart {
        spectrum: super::eigenvalues(m).unwrap_or_default().iter().map(|z| (z.re, z.im)).collect(),
    }
}

pub(super) fn exp(v: &AlgebraElement) -> GroupElement {
    let kind = v.kind;
    let x = v.matrix();
    let d = x.nrows();
    let id = DMatrix::<f64>::identity(d, d);
    let m = match kind {
        GroupKind::So3 => {
            let theta = v.norm() / std::f64::consts::SQRT_2;
            let x2 = &x * &x;
            &id + &x * sinc(theta) + x2 * cosc(theta)
        }
        GroupKind::Su2 => {
            let rho = v.norm() / 2.0;
            &id * rho.cos() + &x * sinc(rho)
        }
        GroupKind::Sl2r => {
            let q = x[(0, 0)] * x[(0, 0)] + x[(0, 1)] * x[(1, 0)];
            if q >= 0.0 {
                let r = q.sqrt();
                &id * r.cosh() + &x * sinhc(r)
            } else {
                let r = (-q).sqrt();
                &id * r.cos() + &x * sinc(r)
            }
        }
        GroupKind::Aff1 => {
            let a = x[(0, 0)];
            let b = x[(0, 1)];
            let phi = if a.abs() < 1e-12 { 1.0 + a / 2.0 } else { a.exp_m1() / a };
            DMatrix::from_row_slice(2, 2, &[a.exp(), b * phi, 0.0, 1.0])
        }
        GroupKind::Sl3r => x.exp(),
    };
    GroupElement::from_matrix_unchecked(kind, m)
}

pub(super) fn log(g: &GroupElement) -> Result<AlgebraElement> {
    let kind = g.kind;
    let spec = kind.spec();
    let m = &g.m;
    match kind {
        GroupKind::So3 => {
            let ax = [
                (m[(2, 1)] - m[(1, 2)]) / 2.0,
                (m[(0, 2)] - m[(2, 0)]) / 2.0,
                (m[(1, 0)] - m[(0, 1)]) / 2.0,
            ];
            let s = (ax[0] * ax[0] + ax[1] * ax[1] + ax[2] * ax[2]).sqrt();
            let c = (m.trace() - 1.0) / 2.0;
            let theta = s.atan2(c);
            if theta > ANGLE_LIMIT {
                return Err(chart_error(m));
            }
            let f = std::f64::consts::SQRT_2 / sinc(theta);
            Ok(AlgebraElement::from_slice(kind, &[ax[0] * f, ax[1] * f, ax[2] * f]))
        }
        GroupKind::Su2 => {
            // U = a I + i (b . sigma), read off the realified blocks
            let a = (m[(0, 0)] + m[(1, 1)]) / 2.0;
            let bx = (m[(2, 1)] + m[(3, 0)]) / 2.0;
            let by = (m[(0, 1)] - m[(1, 0)]) / 2.0;
            let bz = (m[(2, 0)] - m[(3, 1)]) / 2.0;
            let s = (bx * bx + by * by + bz * bz).sqrt();
            let phi = s.atan2(a);
            if phi > ANGLE_LIMIT {
                return Err(chart_error(m));
            }
            // X = i phi (bhat . sigma) has coordinates 2 phi bhat
            let f = 2.0 / sinc(phi);
            Ok(AlgebraElement::from_slice(kind, &[bx * f, by * f, bz * f]))
        }
        GroupKind::Sl2r => {
            let t = m.trace();
            let k00 = (m[(0, 0)] - m[(1, 1)]) / 2.0;
            let q = k00 * k00 + m[(0, 1)] * m[(1, 0)];
            let f = if q.abs() < 1e-10 {
                if t <= 0.0 {
                    return Err(chart_error(m));
                }
                1.0 - q / 6.0
            } else if q > 0.0 {
                if t <= 0.0 {
                    return Err(chart_error(m));
                }
                let r = q.sqrt();
                r.asinh() / r
            } else {
                let r = (-q).sqrt();
                let theta = r.atan2(t / 2.0);
                if theta > ANGLE_LIMIT {
                    return Err(chart_error(m));
                }
                theta / r
            };
            let x = DMatrix::from_row_slice(2, 2, &[k00 * f, m[(0, 1)] * f, m[(1, 0)] * f, -k00 * f]);
            Ok(AlgebraElement::new(kind, spec.vee(&x)))
        }
        GroupKind::Aff1 => {
            let s = m[(0, 0)];
            if !(s > 0.0) {
                return Err(chart_error(m));
            }
            let a = s.ln();
            let phi = if a.abs() < 1e-12 { 1.0 - a / 2.0 } else { a / a.exp_m1() };
            let x = DMatrix::from_row_slice(2, 2, &[a, m[(0, 1)] * phi, 0.0, 0.0]);
            Ok(AlgebraElement::new(kind, spec.vee(&x)))
        }
        GroupKind::Sl3r => {
            let x = logm_generic(m)?;
            Ok(AlgebraElement::new(kind, spec.vee(&x)))
        }
    }
}

/// Principal square root by the Denman-Beavers iteration.
pub fn sqrtm_denman_beavers(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let d = a.nrows();
    let mut y = a.clone();
    let mut z = DMatrix::<f64>::identity(d, d);
    for _ in 0..100 {
        let yi = y.clone().try_inverse()?;
        let zi = z.clone().try_inverse()?;
        let y_next = (&y + zi) * 0.5;
        let z_next = (&z + yi) * 0.5;
        let delta = (&y_next - &y).norm();
        y = y_next;
        z = z_next;
        if delta <= 1e-15 * y.norm() {
            return Some(y);
        }
    }
    None
}

/// Principal matrix logarithm by inverse scaling and squaring.
///
/// Fails with a chart error when an eigenvalue sits on the closed negative real axis.
pub fn logm_generic(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = a.nrows();
    let id = DMatrix::<f64>::identity(d, d);
    for z in super::eigenvalues(a).ok_or_else(|| chart_error(a))? {
        let r = z.norm();
        if r < 1e-300 || (z.im.abs() <= 1e-9 * r.max(1.0) && z.re <= 0.0) {
            return Err(chart_error(a));
        }
    }
    let mut y = a.clone();
    let mut k = 0;
    while (&y - &id).norm() > 0.25 {
        y = sqrtm_denman_beavers(&y).ok_or_else(|| chart_error(a))?;
        k += 1;
        if k > 60 {
            return Err(chart_error(a));
        }
    }
    // log Y = 2 atanh(Z), Z = (Y - I)(Y + I)^-1
    let z = (&y - &id) * (&y + &id).try_inverse().ok_or_else(|| chart_error(a))?;
    let z2 = &z * &z;
    let mut term = z.clone();
    let mut acc = z.clone();
    for j in 1..60 {
        term = &term * &z2;
        let t = &term / (2 * j + 1) as f64;
        acc += &t;
        if t.norm() < 1e-18 * acc.norm().max(1e-300) {
            break;
        }
    }
    Ok(acc * (2.0 * f64::powi(2.0, k)))
}

/// `Log(I + x)` for a small deviation `x`, keeping relative precision when `|x|` is tiny.
pub fn log_near_identity(kind: GroupKind, x: &DMatrix<f64>) -> Result<AlgebraElement> {
    let nx = x.norm();
    let spec = kind.spec();
    if nx == 0.0 {
        return Ok(AlgebraElement::zero(kind));
    }
    if nx < 0.1 {
        let mut term = x.clone();
        let mut acc = x.clone();
        for k in 2..200 {
            term = -(&term * x);
            let t = &term / k as f64;
            acc += &t;
            if t.norm() <= 1e-18 * nx {
                break;
            }
        }
        return Ok(AlgebraElement::new(kind, spec.vee(&acc)));
    }
    let d = x.nrows();
    let g = GroupElement::from_matrix_unchecked(kind, x + DMatrix::<f64>::identity(d, d));
    log(&g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::GroupKind;

    #[test]
    fn sl2r_diagonal_exp() {
        let h = AlgebraElement::from_slice(GroupKind::Sl2r, &[0.5 * std::f64::consts::SQRT_2, 0.0, 0.0]);
        let g = h.exp();
        let want = DMatrix::from_row_slice(2, 2, &[0.5f64.exp(), 0.0, 0.0, (-0.5f64).exp()]);
        assert!((g.matrix() - want).norm() < 1e-14);
    }

    #[test]
    fn exp_of_zero_is_identity() {
        for kind in GroupKind::ALL {
            assert!(AlgebraElement::zero(kind).exp().is_identity(0.0));
        }
    }

    #[test]
    fn closed_forms_match_series_exp() {
        let v = [0.3, -0.7, 0.55];
        for kind in [GroupKind::So3, GroupKind::Su2, GroupKind::Sl2r] {
            let a = AlgebraElement::from_slice(kind, &v);
            assert!((a.exp().matrix() - a.matrix().exp()).norm() < 1e-13, "{kind}");
        }
        let a = AlgebraElement::from_slice(GroupKind::Aff1, &[0.4, -1.2]);
        assert!((a.exp().matrix() - a.matrix().exp()).norm() < 1e-13);
    }

    #[test]
    fn rotation_near_pi_is_off_chart() {
        let a = AlgebraElement::from_slice(GroupKind::So3, &[0.0, 0.0, std::f64::consts::SQRT_2 * PI]);
        assert!(matches!(a.exp().log(), Err(LieError::Chart { .. })));
        let minus = GroupElement::from_matrix_unchecked(
            GroupKind::Sl2r,
            DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, -0.5]),
        );
        assert!(matches!(minus.log(), Err(LieError::Chart { .. })));
    }

    #[test]
    fn log_near_identity_keeps_relative_precision() {
        let v = AlgebraElement::from_slice(GroupKind::Sl2r, &[3e-14, -1e-14, 2e-14]);
        let x = v.matrix().exp() - DMatrix::<f64>::identity(2, 2);
        let back = log_near_identity(GroupKind::Sl2r, &x).unwrap();
        assert!((&back.coords - &v.coords).norm() <= 1e-2 * v.norm());
        let small = v.scale(1e10);
        let x = small.matrix().exp() - DMatrix::<f64>::identity(2, 2);
        let back = log_near_identity(GroupKind::Sl2r, &x).unwrap();
        assert!((&back.coords - &small.coords).norm() <= 1e-12 * small.norm());
    }

    #[test]
    fn denman_beavers_squares_back() {
        let a = AlgebraElement::from_slice(GroupKind::Sl3r, &[0.4, -0.3, 0.8, 0.1, -0.5, 0.2, 0.3, -0.6])
            .exp()
            .into_matrix();
        let r = sqrtm_denman_beavers(&a).unwrap();
        assert!((&r * &r - a).norm() < 1e-12);
    }
}
