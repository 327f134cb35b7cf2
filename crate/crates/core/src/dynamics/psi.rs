//! Limits of products of commutator powers along a parameter slice.
//!
//! For words `g_1..g_n`, `h` and `u` in a fixed n-dimensional slice through the pair,
//! `omega_k(u) = prod_j phi_{g_j(u)}^k(h(u))^{m_jk}` with `m_jk = floor(eps |s_j(0)|^-k)`
//! tends, after rescaling `u = u~ / k`, to `Psi(u~) = prod_j exp(eps e^{sigma_j u~} nu_j)`.

use nalgebra::{Complex, DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{iterate_deviation, run_dynamics, LineCoords};
use crate::error::{LieError, Result};
use crate::lie::{classify_proximal, dist_to_identity, log_near_identity, AlgebraElement, GroupElement, ProximalKind};
use crate::sampling;
use crate::words::{enumerate_reduced, iterated_commutator_bound, Tuple, Word};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PsiMode {
    Real,
    Complex,
}

/// Affine slice `u -> pair * exp(D u)` of the pair space, D with orthonormal columns.
#[derive(Clone, Debug)]
pub struct Slice {
    pub base: Tuple,
    pub directions: DMatrix<f64>,
}

impl Slice {
    pub fn random(base: &Tuple, seed: u64) -> Slice {
        let n = base.kind().spec().algebra_dim;
        let total = n * base.len();
        let mut rng = sampling::rng(seed);
        let raw = DMatrix::from_fn(total, n, |_, _| rand::Rng::sample::<f64, _>(&mut rng, rand_distr::StandardNormal));
        let q = raw.qr().q().columns(0, n).into_owned();
        Slice { base: base.clone(), directions: q }
    }

    pub fn dim(&self) -> usize {
        self.directions.ncols()
    }

    pub fn at(&self, u: &DVector<f64>) -> Tuple {
        self.base.perturbed(&(&self.directions * u))
    }
}

#[derive(Clone, Debug)]
pub struct PsiFactor {
    pub g: Word,
    /// `s(g_j)` at the base pair.
    pub s0: Complex<f64>,
    /// Gradient of `ln s_j` over the slice (imaginary parts zero in the real mode).
    pub sigma: Vec<Complex<f64>>,
    /// `v_{g_j}(h)` at the base pair.
    pub nu: DVector<f64>,
    /// `nu` as a complex coordinate on L(g_j).
    pub nu_coord: Complex<f64>,
    pub coords: LineCoords,
    /// Exponent offset; zero throughout.
    pub offset: i64,
}

impl PsiFactor {
    fn scaled(&self, c: Complex<f64>) -> DVector<f64> {
        self.coords.vector(c * self.nu_coord)
    }

    fn coefficient(&self, ut: &DVector<f64>) -> Complex<f64> {
        let e: Complex<f64> = self.sigma.iter().zip(ut.iter()).map(|(s, u)| s * *u).sum();
        e.exp()
    }
}

#[derive(Clone, Debug)]
pub struct PsiSpec {
    pub mode: PsiMode,
    pub slice: Slice,
    pub h: Word,
    pub epsilon: f64,
    pub factors: Vec<PsiFactor>,
    /// `sum_j nu_j sigma_j`, the derivative of `Psi` at 0 divided by epsilon.
    pub omega: DMatrix<f64>,
    pub sigma_min: f64,
    /// Candidates examined by the search.
    pub candidates_examined: usize,
    /// Radius of the box `D_delta` for `u~`, set to `1 / max_j |sigma_j|`.
    pub domain_radius: f64,
}

impl PsiSpec {
    pub fn kind(&self) -> crate::lie::GroupKind {
        self.slice.base.kind()
    }

    /// `Psi(u~)` at the spec's epsilon.
    /// `count^n` grid over the box `[-domain_radius, domain_radius]^n`.
    pub fn domain_grid(&self, count: usize) -> Vec<DVector<f64>> {
        cube_grid(self.slice.dim(), count, self.domain_radius)
    }

    pub fn psi(&self, ut: &DVector<f64>) -> GroupElement {
        self.psi_eps(ut, self.epsilon)
    }

    pub fn psi_eps(&self, ut: &DVector<f64>, eps: f64) -> GroupElement {
        let kind = self.kind();
        self.factors.iter().fold(GroupElement::identity(kind), |acc, f| {
            let v = f.scaled(f.coefficient(ut)) * eps;
            acc.mul(&AlgebraElement::new(kind, v).exp())
        })
    }

    /// `m_jk = floor(eps |s_j(0)|^-k)`, as a float since it may exceed 2^53.
    pub fn exponent(&self, j: usize, k: usize) -> f64 {
        (self.epsilon * self.factors[j].s0.norm().powi(-(k as i32))).floor()
    }

    /// Upper bound on the letter count of `omega_k`.
    pub fn symbolic_length(&self, k: usize) -> f64 {
        self.factors
            .iter()
            .enumerate()
            .map(|(j, f)| self.exponent(j, k) * iterated_commutator_bound(f.g.len(), self.h.len(), k as u32) as f64)
            .sum()
    }

    /// `omega_k` at the slice point `u`, with each power realized as `exp(m Log phi^k)`.
    pub fn omega_value(&self, k: usize, u: &DVector<f64>) -> Result<GroupElement> {
        let kind = self.kind();
        let pair = self.slice.at(u);
        let ev = pair.evaluator();
        let d = kind.spec().matrix_dim;
        let hx = ev.eval_letters(self.h.letters()) - DMatrix::<f64>::identity(d, d);
        let mut acc = GroupElement::identity(kind);
        for (j, f) in self.factors.iter().enumerate() {
            let g = ev.eval(&f.g);
            let x = iterate_deviation(&g, &hx, k);
            let l = log_near_identity(kind, &x)?;
            acc = acc.mul(&l.scale(self.exponent(j, k)).exp());
        }
        Ok(acc)
    }
}

/// Search settings for [`assemble_psi`].
#[derive(Clone, Debug)]
pub struct PsiSearch {
    pub mode: PsiMode,
    pub epsilon: f64,
    /// Longest candidate word for the `g_j`.
    pub g_len: usize,
    /// Longest candidate word for `h`.
    pub h_len: usize,
    pub budget: usize,
    /// Factors tried jointly per `h`.
    pub pool: usize,
    pub seed: u64,
    pub fd_step: f64,
}

impl PsiSearch {
    pub fn new(mode: PsiMode, seed: u64) -> Self {
        PsiSearch { mode, epsilon: 0.05, g_len: 6, h_len: 8, budget: 2000, pool: 16, seed, fd_step: 1e-5 }
    }
}

fn ln_s(g: &GroupElement, reference: Complex<f64>) -> Option<Complex<f64>> {
    let p = classify_proximal(g);
    if p.kind == ProximalKind::Neither {
        return None;
    }
    let mut l = p.s.ln();
    // keep the branch next to the reference value
    let tau = std::f64::consts::TAU;
    while l.im - reference.im > std::f64::consts::PI {
        l.im -= tau;
    }
    while reference.im - l.im > std::f64::consts::PI {
        l.im += tau;
    }
    Some(l)
}

fn sigma_of(word: &Word, slice: &Slice, s0: Complex<f64>, step: f64, mode: PsiMode) -> Option<Vec<Complex<f64>>> {
    let n = slice.dim();
    let l0 = s0.ln();
    (0..n)
        .map(|i| {
            let mut u = DVector::zeros(n);
            u[i] = step;
            let gp = slice.at(&u).evaluator().eval(word);
            let gm = slice.at(&(-u)).evaluator().eval(word);
            let d = (ln_s(&gp, l0)? - ln_s(&gm, l0)?) / (2.0 * step);
            Some(match mode {
                PsiMode::Real => Complex::new(d.re, 0.0),
                PsiMode::Complex => d,
            })
        })
        .collect()
}

fn omega_matrix(factors: &[&PsiFactor], n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for f in factors {
        for i in 0..n {
            let col = f.scaled(f.sigma[i]);
            let mut c = m.column_mut(i);
            c += col;
        }
    }
    m
}

fn smallest_sv(m: &DMatrix<f64>) -> f64 {
    m.singular_values().iter().copied().fold(f64::INFINITY, f64::min)
}

fn combinations(pool: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, pool: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..pool {
            cur.push(i);
            rec(i + 1, pool, k, cur, out);
            cur.pop();
        }
    }
    rec(0, pool, k, &mut cur, &mut out);
    out
}

/// Search net words for `g_1..g_n` and `h` with an invertible `Psi'(0)`.
///
/// Real mode keeps 1-proximal candidates with `0 < s < 1`; complex mode keeps
/// complex 1-proximal candidates with `|s| < 1`.
pub fn assemble_psi(pair: &Tuple, opts: &PsiSearch) -> Result<PsiSpec> {
    let kind = pair.kind();
    if !kind.is_semisimple() {
        return Err(LieError::Usage(format!("{kind} is not semisimple")));
    }
    let n = kind.spec().algebra_dim;
    let ev = pair.evaluator();
    let words = enumerate_reduced(pair.alphabet(), opts.g_len.max(opts.h_len).max(8));
    for w in words.iter().filter(|w| !w.is_empty() && w.len() <= 8) {
        let dist = dist_to_identity(&ev.eval(w));
        if dist <= 1e-8 {
            return Err(LieError::ReduciblePair { word: w.to_text(), dist });
        }
    }
    let slice = Slice::random(pair, opts.seed);
    let hs: Vec<(Word, GroupElement)> = words
        .iter()
        .filter(|w| !w.is_empty() && w.len() <= opts.h_len)
        .map(|w| (w.clone(), ev.eval(w)))
        .filter(|(_, g)| {
            let d = dist_to_identity(g);
            d > 1e-6 && d <= super::BASIN_RADIUS
        })
        .take(10)
        .collect();
    if hs.is_empty() {
        return Err(LieError::Search(format!("no word of length <= {} within the basin radius", opts.h_len)));
    }
    let gs: Vec<(Word, GroupElement, Complex<f64>)> = words
        .iter()
        .filter(|w| !w.is_empty() && w.len() <= opts.g_len)
        .filter_map(|w| {
            let g = ev.eval(w);
            let p = classify_proximal(&g);
            let ok = match opts.mode {
                PsiMode::Real => p.in_pi() && p.s.re > 0.0,
                PsiMode::Complex => p.in_pi_c1(),
            };
            // a clear spectral gap keeps s smooth across the finite-difference stencil
            (ok && p.spectral_gap < 0.9).then(|| (w.clone(), g, p.s))
        })
        .collect();
    let mut examined = 0usize;
    let mut best_seen = 0.0f64;
    for (h, hv) in &hs {
        let mut pool: Vec<PsiFactor> = Vec::new();
        for (w, g, s0) in &gs {
            if examined >= opts.budget || pool.len() >= opts.pool {
                break;
            }
            examined += 1;
            let Ok(rep) = run_dynamics(g, hv, 400) else { continue };
            if rep.v_estimate.norm() < 1e-8 {
                continue;
            }
            let Some(sigma) = sigma_of(w, &slice, *s0, opts.fd_step, opts.mode) else { continue };
            pool.push(PsiFactor {
                g: w.clone(),
                s0: *s0,
                sigma,
                nu: rep.v_estimate.coords.clone(),
                nu_coord: rep.v_coord,
                coords: rep.coords,
                offset: 0,
            });
        }
        if pool.len() >= n {
            let combos = combinations(pool.len(), n);
            let scored: Vec<(f64, usize)> = combos
                .par_iter()
                .enumerate()
                .map(|(ci, c)| {
                    let fs: Vec<&PsiFactor> = c.iter().map(|&i| &pool[i]).collect();
                    (smallest_sv(&omega_matrix(&fs, n)), ci)
                })
                .collect();
            let (sv, ci) = scored
                .into_iter()
                .fold((f64::NEG_INFINITY, 0), |a, b| if b.0 > a.0 { b } else { a });
            best_seen = best_seen.max(sv);
            if sv >= 1e-4 {
                let factors: Vec<PsiFactor> = combos[ci].iter().map(|&i| pool[i].clone()).collect();
                let refs: Vec<&PsiFactor> = factors.iter().collect();
                let omega = omega_matrix(&refs, n);
                let sigma_max = factors
                    .iter()
                    .map(|f| f.sigma.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt())
                    .fold(0.0, f64::max);
                return Ok(PsiSpec {
                    domain_radius: 1.0 / sigma_max.max(1.0),
                    mode: opts.mode,
                    slice,
                    h: h.clone(),
                    epsilon: opts.epsilon,
                    factors,
                    omega,
                    sigma_min: sv,
                    candidates_examined: examined,
                });
            }
        }
        if examined >= opts.budget {
            break;
        }
    }
    Err(LieError::Search(format!(
        "{examined} candidates ({} proximal words, {} basin words), best smallest singular value {best_seen:.3e}",
        gs.len(),
        hs.len()
    )))
}

/// Finite-difference Jacobian of `u~ -> Log(Psi(0)^-1 Psi(u~))` at 0 and its distance
/// from `eps * omega`.
pub fn psi_jacobian(spec: &PsiSpec, eps: f64) -> Result<(DMatrix<f64>, f64)> {
    let n = spec.slice.dim();
    let h = 1e-6;
    let p0 = spec.psi_eps(&DVector::zeros(n), eps).inverse();
    let mut jac = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut u = DVector::zeros(n);
        u[i] = h;
        let plus = p0.mul(&spec.psi_eps(&u, eps)).log()?;
        let minus = p0.mul(&spec.psi_eps(&(-u), eps)).log()?;
        jac.set_column(i, &((plus.coords - minus.coords) / (2.0 * h)));
    }
    let dev = (&jac - &spec.omega * eps).norm();
    Ok((jac, dev))
}

#[derive(Clone, Debug, Serialize)]
pub struct PsiLimitRow {
    pub k: usize,
    /// Largest `d(omega_k(alpha(u~/k)), Psi(u~))` over the grid.
    pub sup_err: f64,
    pub center_err: f64,
    /// Letter count bound of `omega_k`.
    pub symbolic_length: f64,
    /// Powers evaluated numerically because the words are too long to spell out.
    pub numeric_realization: bool,
}

/// Grid of `count^n` points in the cube `[-radius, radius]^n`.
pub fn cube_grid(n: usize, count: usize, radius: f64) -> Vec<DVector<f64>> {
    let axis: Vec<f64> = (0..count)
        .map(|i| if count == 1 { 0.0 } else { -radius + 2.0 * radius * i as f64 / (count - 1) as f64 })
        .collect();
    let total = count.pow(n as u32);
    (0..total)
        .map(|mut idx| {
            DVector::from_fn(n, |_, _| {
                let v = axis[idx % count];
                idx /= count;
                v
            })
        })
        .collect()
}

/// Sup-grid distance between `omega_k(alpha(u~/k))` and `Psi(u~)` for each k.
pub fn verify_psi_limit(spec: &PsiSpec, ks: &[usize], grid: &[DVector<f64>]) -> Result<Vec<PsiLimitRow>> {
    let n = spec.slice.dim();
    ks.iter()
        .map(|&k| {
            let errs: Vec<f64> = grid
                .par_iter()
                .map(|ut| {
                    let w = spec.omega_value(k, &(ut / k as f64))?;
                    Ok(crate::lie::distance(&w, &spec.psi(ut)))
                })
                .collect::<Result<_>>()?;
            let center = spec.omega_value(k, &DVector::zeros(n))?;
            let len = spec.symbolic_length(k);
            Ok(PsiLimitRow {
                k,
                sup_err: errs.iter().copied().fold(0.0, f64::max),
                center_err: crate::lie::distance(&center, &spec.psi(&DVector::zeros(n))),
                symbolic_length: len,
                numeric_realization: len > 1e6,
            })
        })
        .collect()
}

/// Record-setting `k <= k_max` for `max_j dist(k zeta_j, 2 pi Z)`.
pub fn select_k_subsequence(zetas: &[f64], k_max: usize) -> Vec<(usize, f64)> {
    let tau = std::f64::consts::TAU;
    let mut best = f64::INFINITY;
    let mut out = Vec::new();
    for k in 1..=k_max {
        let d = zetas
            .iter()
            .map(|z| {
                let r = (k as f64 * z).rem_euclid(tau);
                r.min(tau - r)
            })
            .fold(0.0, f64::max);
        if d < best {
            best = d;
            out.push((k, d));
        }
    }
    out
}
