//! Writing algebra elements as brackets and near-identity group elements as commutators.
//!
//! The weak solver splits `z` along a root decomposition `g = E + Ad_g E` and inverts
//! `ad_x` on each piece; the strong solver finds a single bracket.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LieError, Result};
use crate::lie::{ad, adjoint, dist_to_identity, distance, AlgebraElement, GroupElement, GroupKind};
use crate::sampling::{self, random_direction};

/// Smallest singular value of `[E | Ad_g E]` accepted for a splitting element.
pub const SPLIT_TOL: f64 = 1e-3;
/// Largest `d(z, I)` accepted by [`group_commutator_factor`].
pub const FACTOR_REGIME: f64 = 0.3;
const ZERO_Z: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SkMode {
    Strong,
    Weak,
}

impl SkMode {
    /// Commutator factors per refinement step.
    pub fn parts(self) -> usize {
        match self {
            SkMode::Strong => 1,
            SkMode::Weak => 2,
        }
    }

    /// Word-length multiplier per level: 1 + 4 * parts.
    pub fn length_factor(self) -> usize {
        1 + 4 * self.parts()
    }
}

impl std::str::FromStr for SkMode {
    type Err = LieError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strong" => Ok(SkMode::Strong),
            "weak" => Ok(SkMode::Weak),
            _ => Err(LieError::Usage(format!("unknown mode {s:?} (strong|weak)"))),
        }
    }
}

impl std::fmt::Display for SkMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SkMode::Strong => "strong",
            SkMode::Weak => "weak",
        })
    }
}

/// Orthonormal basis of the column space of `a` and the rank used.
fn range_basis(a: &DMatrix<f64>, rank: usize) -> DMatrix<f64> {
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("u requested");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let mut out = DMatrix::zeros(a.nrows(), rank);
    for (c, &i) in idx.iter().take(rank).enumerate() {
        out.set_column(c, &u.column(i));
    }
    out
}

fn sorted_singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = a.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

fn kernel_dim(adx: &DMatrix<f64>) -> usize {
    let s = sorted_singular_values(adx);
    let top = s[0].max(f64::MIN_POSITIVE);
    s.iter().filter(|&&v| v <= 1e-8 * top).count()
}

fn orthonormalize(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.clone().qr().q().columns(0, a.ncols()).into_owned()
}

#[derive(Clone, Debug)]
struct Splitting {
    g: GroupElement,
    sigma_min: f64,
    /// `[E | T]^-1`, splitting z into E-coordinates and T-coordinates.
    split_inv: DMatrix<f64>,
    /// T basis, a complement of E inside Ad_g E.
    t_basis: DMatrix<f64>,
    /// `y~_1 = m1 a` for `z_1 = E a`.
    m1: DMatrix<f64>,
    /// `y~_2 = m2 b` for `z_2 = T b`.
    m2: DMatrix<f64>,
    x2: AlgebraElement,
}

/// Cartan subalgebra of a regular element, its root-space complement E and a splitting
/// element g with `g = E + Ad_g E`.
#[derive(Clone, Debug)]
pub struct RootDecomposition {
    pub kind: GroupKind,
    pub regular_x: AlgebraElement,
    /// Orthonormal columns spanning `ker ad_x`.
    pub cartan_basis: DMatrix<f64>,
    /// Orthonormal columns spanning `im ad_x`.
    pub complement_basis: DMatrix<f64>,
    /// Projection onto the Cartan subalgebra along E.
    pub projector_h: DMatrix<f64>,
    /// Condition number of `ad_x` restricted to E.
    pub condition: f64,
    /// `ad_x` restricted to E in the complement basis, inverted.
    restricted_inverse: DMatrix<f64>,
    splitting: Option<Splitting>,
}

impl RootDecomposition {
    /// Decomposition for a given element, which must be regular.
    pub fn with_regular(x: AlgebraElement) -> Result<Self> {
        let kind = x.kind;
        if !kind.is_semisimple() {
            return Err(LieError::Usage(format!("{kind} is not semisimple")));
        }
        let n = kind.spec().algebra_dim;
        let adx = ad(&x);
        let r = kernel_dim(&adx);
        if r == 0 || r >= n {
            return Err(LieError::Decomposition(format!("kernel of ad_x has dimension {r}")));
        }
        let h = crate::lie::null_space(&adx, r);
        let e = range_basis(&adx, n - r);
        let mut he = DMatrix::zeros(n, n);
        he.columns_mut(0, r).copy_from(&h);
        he.columns_mut(r, n - r).copy_from(&e);
        let he_inv = he
            .try_inverse()
            .ok_or_else(|| LieError::Decomposition("kernel and image of ad_x overlap".into()))?;
        let projector_h = &h * he_inv.rows(0, r);
        let a_e = e.transpose() * &adx * &e;
        let s = sorted_singular_values(&a_e);
        let condition = s[0] / s[s.len() - 1];
        let restricted_inverse = a_e
            .try_inverse()
            .ok_or_else(|| LieError::Decomposition("ad_x is singular on E".into()))?;
        Ok(RootDecomposition {
            kind,
            regular_x: x,
            cartan_basis: h,
            complement_basis: e,
            projector_h,
            condition,
            restricted_inverse,
            splitting: None,
        })
    }

    pub fn rank(&self) -> usize {
        self.cartan_basis.ncols()
    }

    pub fn splitting_g(&self) -> Option<&GroupElement> {
        self.splitting.as_ref().map(|s| &s.g)
    }

    /// Smallest singular value of `[E | Ad_g E]` for the stored splitting element.
    pub fn splitting_sigma(&self) -> Option<f64> {
        self.splitting.as_ref().map(|s| s.sigma_min)
    }

    /// Install `g` as splitting element; fails when `[E | Ad_g E]` is rank deficient.
    pub fn set_splitting(&mut self, g: GroupElement) -> Result<()> {
        if g.kind() != self.kind {
            return Err(LieError::Usage("splitting element lies in another group".into()));
        }
        let sigma_min = split_sigma(&self.complement_basis, &g);
        if sigma_min < SPLIT_TOL {
            return Err(LieError::Search(format!(
                "[E | Ad_g E] has smallest singular value {sigma_min:e}"
            )));
        }
        let n = self.kind.spec().algebra_dim;
        let r = self.rank();
        let e = &self.complement_basis;
        let adg = adjoint(&g);
        let adg_inv = adjoint(&g.inverse());
        let e2 = &adg * e;
        let perp = DMatrix::<f64>::identity(n, n) - e * e.transpose();
        let q = &perp * &e2;
        let svd = q.svd(false, true);
        let vt = svd.v_t.expect("v_t requested");
        let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
        idx.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
        let mut v = DMatrix::zeros(e2.ncols(), r);
        for (c, &i) in idx.iter().take(r).enumerate() {
            v.set_column(c, &vt.row(i).transpose());
        }
        let t_basis = &e2 * v;
        let mut et = DMatrix::zeros(n, n);
        et.columns_mut(0, n - r).copy_from(e);
        et.columns_mut(n - r, r).copy_from(&t_basis);
        let split_inv = et
            .try_inverse()
            .ok_or_else(|| LieError::Decomposition("E and T do not span the algebra".into()))?;
        let m1 = e * &self.restricted_inverse;
        let m2 = &adg * e * &self.restricted_inverse * e.transpose() * &adg_inv * &t_basis;
        let x2 = AlgebraElement::new(self.kind, &adg * &self.regular_x.coords);
        self.splitting = Some(Splitting { g, sigma_min, split_inv, t_basis, m1, m2, x2 });
        Ok(())
    }
}

/// Smallest singular value of `[E | Ad_g E]` with both blocks orthonormalized.
fn split_sigma(e: &DMatrix<f64>, g: &GroupElement) -> f64 {
    let n = e.nrows();
    let k = e.ncols();
    let e2 = orthonormalize(&(adjoint(g) * e));
    let mut m = DMatrix::zeros(n, 2 * k);
    m.columns_mut(0, k).copy_from(e);
    m.columns_mut(k, k).copy_from(&e2);
    let s = sorted_singular_values(&m);
    s.get(n - 1).copied().unwrap_or(0.0)
}

/// Sample a regular element: 20 random directions, keep the best-conditioned one among
/// those with the smallest kernel of `ad_x`.
pub fn root_decompose(kind: GroupKind, seed: u64) -> Result<RootDecomposition> {
    if !kind.is_semisimple() {
        return Err(LieError::Usage(format!("{kind} is not semisimple")));
    }
    let mut rng = sampling::rng(seed);
    let samples: Vec<AlgebraElement> = (0..20).map(|_| random_direction(kind, &mut rng)).collect();
    let dims: Vec<usize> = samples.iter().map(|x| kernel_dim(&ad(x))).collect();
    let min_dim = *dims.iter().min().expect("20 samples");
    let hits = dims.iter().filter(|&&d| d == min_dim).count();
    if min_dim == 0 || hits < 10 {
        return Err(LieError::Decomposition(format!(
            "kernel dimension unstable across samples: {dims:?}"
        )));
    }
    let mut best: Option<RootDecomposition> = None;
    for (x, &d) in samples.into_iter().zip(&dims) {
        if d != min_dim {
            continue;
        }
        let Ok(rd) = RootDecomposition::with_regular(x) else { continue };
        if best.as_ref().is_none_or(|b| rd.condition < b.condition) {
            best = Some(rd);
        }
    }
    best.ok_or_else(|| LieError::Decomposition("no regular sample decomposed".into()))
}

/// Search `g = Exp(t v)` over 50 random directions and `t = 0.1, ..., 1.0`, keeping the
/// candidate with the largest smallest singular value of `[E | Ad_g E]`.
pub fn find_splitting_element(rd: &mut RootDecomposition, seed: u64) -> Result<GroupElement> {
    let mut rng = sampling::rng(seed);
    let mut best: Option<(f64, GroupElement)> = None;
    for _ in 0..50 {
        let v = random_direction(rd.kind, &mut rng);
        for i in 1..=10 {
            let g = v.scale(0.1 * i as f64).exp();
            let s = split_sigma(&rd.complement_basis, &g);
            if best.as_ref().is_none_or(|(b, _)| s > *b) {
                best = Some((s, g));
            }
        }
    }
    match best {
        Some((s, g)) if s >= SPLIT_TOL => {
            rd.set_splitting(g.clone())?;
            Ok(g)
        }
        Some((s, _)) => Err(LieError::Search(format!(
            "500 candidates, best smallest singular value {s:e}"
        ))),
        None => unreachable!(),
    }
}

/// Bracket decomposition `z = sum [x_j, y_j]` with `|x_j| = |y_j|`.
#[derive(Clone, Debug)]
pub struct SkSolution {
    pub mode: SkMode,
    pub parts: Vec<(AlgebraElement, AlgebraElement)>,
    pub residual: f64,
    pub norm_ratio: f64,
}

impl SkSolution {
    fn zero(kind: GroupKind, mode: SkMode) -> Self {
        let z = AlgebraElement::zero(kind);
        SkSolution {
            mode,
            parts: vec![(z.clone(), z); mode.parts()],
            residual: 0.0,
            norm_ratio: 0.0,
        }
    }

    fn finish(mode: SkMode, parts: Vec<(AlgebraElement, AlgebraElement)>, z: &AlgebraElement) -> Self {
        let mut sum = AlgebraElement::zero(z.kind);
        for (x, y) in &parts {
            sum = sum.add(&x.bracket(y));
        }
        let residual = sum.sub(z).norm();
        let top = parts.iter().map(|(x, _)| x.norm()).fold(0.0, f64::max);
        SkSolution { mode, parts, residual, norm_ratio: top / z.norm().sqrt() }
    }

    pub fn max_x_norm(&self) -> f64 {
        self.parts.iter().map(|(x, _)| x.norm()).fold(0.0, f64::max)
    }
}

/// Rescale `(x, y)` to equal norms without changing the bracket.
fn balance(x: DVector<f64>, y: DVector<f64>, kind: GroupKind) -> (AlgebraElement, AlgebraElement) {
    let nx = x.norm();
    let ny = y.norm();
    if nx == 0.0 || ny == 0.0 {
        return (AlgebraElement::zero(kind), AlgebraElement::zero(kind));
    }
    let f = (ny / nx).sqrt();
    (AlgebraElement::new(kind, x * f), AlgebraElement::new(kind, y / f))
}

/// Two-bracket solve by the root decomposition.
pub fn weak_sk_solve(rd: &RootDecomposition, z: &AlgebraElement) -> Result<SkSolution> {
    if z.kind != rd.kind {
        return Err(LieError::Usage("algebra element from another group".into()));
    }
    let sp = rd
        .splitting
        .as_ref()
        .ok_or_else(|| LieError::Usage("decomposition has no splitting element".into()))?;
    if z.norm() < ZERO_Z {
        return Ok(SkSolution::zero(rd.kind, SkMode::Weak));
    }
    let n = rd.kind.spec().algebra_dim;
    let r = rd.rank();
    let c = &sp.split_inv * &z.coords;
    let mut a = c.rows(0, n - r).into_owned();
    let mut b = c.rows(n - r, r).into_owned();
    // components at rounding level relative to z are dropped
    let floor = 1e-13 * z.norm();
    for part in [&mut a, &mut b] {
        if part.norm() <= floor {
            part.fill(0.0);
        }
    }
    let y1 = &sp.m1 * a;
    let y2 = &sp.m2 * b;
    let parts = vec![
        balance(rd.regular_x.coords.clone(), y1, rd.kind),
        balance(sp.x2.coords.clone(), y2, rd.kind),
    ];
    Ok(SkSolution::finish(SkMode::Weak, parts, z))
}

/// The `E`-component and `T`-component of `z` for a decomposition with a splitting.
pub fn split_components(rd: &RootDecomposition, z: &AlgebraElement) -> Option<(AlgebraElement, AlgebraElement)> {
    let sp = rd.splitting.as_ref()?;
    let n = rd.kind.spec().algebra_dim;
    let r = rd.rank();
    let c = &sp.split_inv * &z.coords;
    let z1 = &rd.complement_basis * c.rows(0, n - r);
    let z2 = &sp.t_basis * c.rows(n - r, r);
    Some((AlgebraElement::new(rd.kind, z1), AlgebraElement::new(rd.kind, z2)))
}

const NEWTON_ITERS: usize = 200;
const NEWTON_RESTARTS: u64 = 20;

/// Single bracket `[x, y] = z`.
///
/// For su2 and so3 `x` is a unit vector orthogonal to `z` and `y` solves `ad_x y = z`
/// on the image of `ad_x`. For the split groups a damped Gauss-Newton iteration with
/// least-norm steps is run on the normalized problem `[x, y] = z / |z|`.
pub fn strong_sk_solve(kind: GroupKind, z: &AlgebraElement, seed: u64) -> Result<SkSolution> {
    if z.kind != kind {
        return Err(LieError::Usage("algebra element from another group".into()));
    }
    if kind == GroupKind::Aff1 {
        return Err(LieError::Usage("aff1 has no strong solver".into()));
    }
    let nz = z.norm();
    if nz < ZERO_Z {
        return Ok(SkSolution::zero(kind, SkMode::Strong));
    }
    let unit = z.scale(1.0 / nz);
    let (x, y) = if kind.is_compact() {
        compact_bracket(&unit)
    } else {
        newton_bracket(&unit, seed)?
    };
    let root = nz.sqrt();
    let (x, y) = balance(x * root, y * root, kind);
    Ok(SkSolution::finish(SkMode::Strong, vec![(x, y)], z))
}

fn compact_bracket(z: &AlgebraElement) -> (DVector<f64>, DVector<f64>) {
    let n = z.coords.len();
    // basis vector least aligned with z, made orthogonal to it
    let k = (0..n)
        .min_by(|&i, &j| z.coords[i].abs().total_cmp(&z.coords[j].abs()))
        .expect("nonempty");
    let mut u = DVector::<f64>::zeros(n);
    u[k] = 1.0;
    u -= &z.coords * z.coords.dot(&u);
    u /= u.norm();
    let x = AlgebraElement::new(z.kind, u.clone());
    let adx = ad(&x);
    let y = adx.svd(true, true).solve(&z.coords, 1e-12).expect("svd solve");
    (u, y)
}

fn bracket_residual(x: &DVector<f64>, y: &DVector<f64>, z: &AlgebraElement) -> DVector<f64> {
    let xa = AlgebraElement::new(z.kind, x.clone());
    let ya = AlgebraElement::new(z.kind, y.clone());
    xa.bracket(&ya).coords - &z.coords
}

fn newton_bracket(z: &AlgebraElement, seed: u64) -> Result<(DVector<f64>, DVector<f64>)> {
    let kind = z.kind;
    let n = z.coords.len();
    let mut best = f64::INFINITY;
    for restart in 0..NEWTON_RESTARTS {
        let mut rng = sampling::rng(seed.wrapping_add(restart.wrapping_mul(0x9e37_79b9)));
        let mut x = random_direction(kind, &mut rng).coords;
        let mut y = random_direction(kind, &mut rng).coords;
        let mut f = bracket_residual(&x, &y, z);
        for _ in 0..NEWTON_ITERS {
            let fn_ = f.norm();
            best = best.min(fn_);
            if fn_ <= 1e-14 {
                return Ok((x, y));
            }
            // d[x,y] = [dx, y] + [x, dy] = -ad_y dx + ad_x dy
            let xa = AlgebraElement::new(kind, x.clone());
            let ya = AlgebraElement::new(kind, y.clone());
            let mut jac = DMatrix::zeros(n, 2 * n);
            jac.columns_mut(0, n).copy_from(&(-ad(&ya)));
            jac.columns_mut(n, n).copy_from(&ad(&xa));
            let Ok(step) = jac.svd(true, true).solve(&(-&f), 1e-13) else { break };
            let mut t = 1.0;
            let mut moved = false;
            while t > 1e-6 {
                let xn = &x + step.rows(0, n) * t;
                let yn = &y + step.rows(n, n) * t;
                let fnew = bracket_residual(&xn, &yn, z);
                if fnew.norm() < fn_ {
                    x = xn;
                    y = yn;
                    f = fnew;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
        if f.norm() <= 1e-14 {
            return Ok((x, y));
        }
    }
    Err(LieError::Solver { msg: "bracket Newton did not converge".into(), best_residual: best })
}

/// Solver selected by mode: a decomposition for weak mode, the group for strong mode.
#[derive(Clone, Debug)]
pub enum Factorizer {
    Weak(Box<RootDecomposition>),
    Strong(GroupKind),
}

impl Factorizer {
    /// Weak factorizer with a seeded decomposition and splitting element.
    pub fn weak(kind: GroupKind, seed: u64) -> Result<Self> {
        let mut rd = root_decompose(kind, seed)?;
        find_splitting_element(&mut rd, seed.wrapping_add(1))?;
        Ok(Factorizer::Weak(Box::new(rd)))
    }

    pub fn new(kind: GroupKind, mode: SkMode, seed: u64) -> Result<Self> {
        match mode {
            SkMode::Weak => Factorizer::weak(kind, seed),
            SkMode::Strong => {
                if !kind.is_semisimple() {
                    return Err(LieError::Usage(format!("{kind} is not semisimple")));
                }
                Ok(Factorizer::Strong(kind))
            }
        }
    }

    pub fn kind(&self) -> GroupKind {
        match self {
            Factorizer::Weak(rd) => rd.kind,
            Factorizer::Strong(k) => *k,
        }
    }

    pub fn mode(&self) -> SkMode {
        match self {
            Factorizer::Weak(_) => SkMode::Weak,
            Factorizer::Strong(_) => SkMode::Strong,
        }
    }

    pub fn solve(&self, z: &AlgebraElement) -> Result<SkSolution> {
        match self {
            Factorizer::Weak(rd) => weak_sk_solve(rd, z),
            Factorizer::Strong(k) => strong_sk_solve(*k, z, 0x5eed),
        }
    }
}

/// Group commutators approximating a near-identity element.
#[derive(Clone, Debug)]
pub struct CommutatorFactor {
    /// `(Exp x_j, Exp y_j)` for each algebra part.
    pub pairs: Vec<(GroupElement, GroupElement)>,
    pub solution: SkSolution,
    pub delta: f64,
    pub achieved_dist: f64,
}

/// Product of the commutators `[a_j, b_j]`.
pub fn commutator_product(kind: GroupKind, pairs: &[(GroupElement, GroupElement)]) -> GroupElement {
    pairs
        .iter()
        .fold(GroupElement::identity(kind), |acc, (a, b)| acc.mul(&a.comm(b)))
}

/// Factor `z` near the identity as a product of group commutators of exponentials.
pub fn group_commutator_factor(f: &Factorizer, z: &GroupElement) -> Result<CommutatorFactor> {
    let kind = f.kind();
    if z.kind() != kind {
        return Err(LieError::Usage("element from another group".into()));
    }
    let delta = dist_to_identity(z);
    if delta > FACTOR_REGIME {
        return Err(LieError::Regime(format!(
            "d(z, I) = {delta:.6} exceeds {FACTOR_REGIME}"
        )));
    }
    if delta == 0.0 {
        return Ok(CommutatorFactor {
            pairs: Vec::new(),
            solution: SkSolution::zero(kind, f.mode()),
            delta,
            achieved_dist: 0.0,
        });
    }
    let v = z.log()?;
    let solution = f.solve(&v)?;
    let pairs: Vec<(GroupElement, GroupElement)> =
        solution.parts.iter().map(|(x, y)| (x.exp(), y.exp())).collect();
    let achieved_dist = distance(z, &commutator_product(kind, &pairs));
    Ok(CommutatorFactor { pairs, solution, delta, achieved_dist })
}

/// Per-group constants measured from random solves.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Calibration {
    pub group: GroupKind,
    pub mode: SkMode,
    /// Largest `max_j |x_j| / sqrt|z|` over the algebra samples.
    pub c_w: f64,
    /// The same for the single-bracket solver; absent where it does not apply.
    pub c_strong: Option<f64>,
    /// Largest `achieved_dist / delta^1.5` over group samples with delta in [1e-3, 0.3].
    pub c_dd: f64,
    pub algebra_samples: usize,
    pub group_samples: usize,
    pub seed: u64,
}

/// Measure the solver constants for one group and mode.
pub fn calibrate(f: &Factorizer, algebra_samples: usize, group_samples: usize, seed: u64) -> Result<Calibration> {
    let kind = f.kind();
    let ratio = |fz: &Factorizer, s: u64, count: usize| -> Result<f64> {
        let vals: Vec<f64> = (0..count)
            .into_par_iter()
            .map(|i| {
                let mut rng = sampling::rng(s ^ (i as u64).wrapping_mul(0x2545_f491_4f6c_dd1d));
                let scale = 10f64.powf(rng.random_range(-4.0..2.0));
                let z = random_direction(kind, &mut rng).scale(scale);
                fz.solve(&z).map(|sol| sol.norm_ratio)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(vals.into_iter().fold(0.0, f64::max))
    };
    let c_w = ratio(f, seed, algebra_samples)?;
    let c_strong = if kind.is_semisimple() {
        Some(ratio(&Factorizer::Strong(kind), seed ^ 0x57, algebra_samples.min(2000))?)
    } else {
        None
    };
    let dd: Vec<f64> = (0..group_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sampling::rng(seed ^ 0xdd ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let delta = 10f64.powf(rng.random_range(-3.0..(0.3f64).log10()));
            let z = random_direction(kind, &mut rng).scale(delta).exp();
            group_commutator_factor(f, &z).map(|c| c.achieved_dist / c.delta.powf(1.5))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Calibration {
        group: kind,
        mode: f.mode(),
        c_w,
        c_strong,
        c_dd: dd.into_iter().fold(0.0, f64::max),
        algebra_samples,
        group_samples,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sl2r_diagonal_decomposition() {
        let x = AlgebraElement::from_slice(GroupKind::Sl2r, &[1.0, 0.0, 0.0]);
        let spec = GroupKind::Sl2r.spec();
        // the first basis vector must be the diagonal direction for this test to mean anything
        let m = spec.hat(&x.coords);
        assert!(m[(0, 1)].abs() < 1e-14 && m[(1, 0)].abs() < 1e-14);
        let rd = RootDecomposition::with_regular(x).unwrap();
        assert_eq!(rd.rank(), 1);
        assert_eq!(rd.complement_basis.ncols(), 2);
        let p = &rd.projector_h;
        assert!((p * p - p).norm() < 1e-12);
    }

    #[test]
    fn ranks_of_registered_groups() {
        for (kind, r) in [(GroupKind::Su2, 1), (GroupKind::So3, 1), (GroupKind::Sl2r, 1), (GroupKind::Sl3r, 2)] {
            let rd = root_decompose(kind, 3).unwrap();
            assert_eq!(rd.rank(), r, "{kind}");
        }
        assert!(matches!(root_decompose(GroupKind::Aff1, 3), Err(LieError::Usage(_))));
    }

    #[test]
    fn identity_never_splits() {
        let mut rd = root_decompose(GroupKind::Sl2r, 1).unwrap();
        assert!(rd.set_splitting(GroupElement::identity(GroupKind::Sl2r)).is_err());
        let g = find_splitting_element(&mut rd, 2).unwrap();
        assert!(rd.splitting_sigma().unwrap() >= SPLIT_TOL);
        assert_eq!(rd.splitting_g(), Some(&g));
    }

    #[test]
    fn weak_solve_on_e_uses_one_bracket() {
        let mut rd = root_decompose(GroupKind::Sl3r, 5).unwrap();
        find_splitting_element(&mut rd, 6).unwrap();
        let z = AlgebraElement::new(GroupKind::Sl3r, &rd.complement_basis * DVector::from_fn(6, |i, _| i as f64 - 2.5));
        let sol = weak_sk_solve(&rd, &z).unwrap();
        assert!(sol.parts[1].0.norm() == 0.0 && sol.parts[1].1.norm() == 0.0);
        assert!(sol.parts[0].0.bracket(&sol.parts[0].1).sub(&z).norm() < 1e-12 * z.norm());
        let zero = weak_sk_solve(&rd, &AlgebraElement::zero(GroupKind::Sl3r)).unwrap();
        assert!(zero.parts.iter().all(|(x, y)| x.norm() == 0.0 && y.norm() == 0.0));
    }

    #[test]
    fn strong_solver_closed_form_and_newton() {
        for kind in [GroupKind::Su2, GroupKind::So3, GroupKind::Sl2r, GroupKind::Sl3r] {
            let mut rng = sampling::rng(11);
            for _ in 0..20 {
                let z = random_direction(kind, &mut rng).scale(0.37);
                let sol = strong_sk_solve(kind, &z, 4).unwrap();
                let (x, y) = &sol.parts[0];
                assert!(sol.residual <= 1e-9, "{kind} {}", sol.residual);
                assert!((x.norm() - y.norm()).abs() <= 1e-9 * x.norm());
            }
        }
    }

    #[test]
    fn sl2_nilpotent_bracket() {
        // e = [[0,1],[0,0]] expressed in the orthonormal basis
        let spec = GroupKind::Sl2r.spec();
        let e = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let z = AlgebraElement::new(GroupKind::Sl2r, spec.vee(&e));
        let sol = strong_sk_solve(GroupKind::Sl2r, &z, 1).unwrap();
        assert!(sol.residual < 1e-12);
    }

    #[test]
    fn factor_regime_and_identity() {
        let f = Factorizer::weak(GroupKind::Su2, 1).unwrap();
        let id = GroupElement::identity(GroupKind::Su2);
        let c = group_commutator_factor(&f, &id).unwrap();
        assert!(c.pairs.is_empty() && c.achieved_dist == 0.0);
        let far = AlgebraElement::from_slice(GroupKind::Su2, &[0.5, 0.0, 0.0]).exp();
        assert!(matches!(group_commutator_factor(&f, &far), Err(LieError::Regime(_))));
    }
}
