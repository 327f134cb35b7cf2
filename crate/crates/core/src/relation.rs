//! Pairs near a given pair that satisfy a nontrivial relation.
//!
//! Three constructions: a net word corrected by Newton on the pair space, a product of
//! commutator powers solved on a slice (SL(2,R)), and the closed form in the affine group.

use nalgebra::{DMatrix, DVector};
use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{cube_grid, PsiSpec};
use crate::error::{LieError, Result};
use crate::lie::{dist_to_identity, distance, GroupElement, GroupKind};
use crate::sampling;
use crate::sk::{fit_rate, kappa_theory, RateFit, SkLevelState};
use crate::words::{iterated_commutator_bound, word_jacobian, Tuple, Word};

/// Residual a certificate must reach.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Pair distance of the non-identicality probe.
pub const PROBE_DIST: f64 = 0.1;
/// Smallest `d(w, I)` at the probe pair for the relation to count as non-identical.
pub const PROBE_MIN: f64 = 1e-4;
pub const NEWTON_MAX_ITER: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationMethod {
    NetNewton,
    CommutatorPower,
    AffineClosedForm,
}

/// `phi_g^depth(h)^exponent`, kept symbolic because the letter count explodes.
#[derive(Clone, Debug, Serialize)]
pub struct PowerTerm {
    pub g: Word,
    pub h: Word,
    pub depth: usize,
    /// Integer exponent; stored as a float since it may exceed 2^64.
    pub exponent: f64,
}

impl PowerTerm {
    pub fn length_bound(&self) -> f64 {
        self.exponent * iterated_commutator_bound(self.g.len(), self.h.len(), self.depth as u32) as f64
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum RelationWord {
    Explicit { word: Word },
    /// `(prod inverse)^-1 * prod terms`.
    PowerProduct { inverse: Vec<PowerTerm>, terms: Vec<PowerTerm> },
}

impl RelationWord {
    pub fn letter_bound(&self) -> f64 {
        match self {
            RelationWord::Explicit { word } => word.len() as f64,
            RelationWord::PowerProduct { inverse, terms } => {
                inverse.iter().chain(terms).map(PowerTerm::length_bound).sum()
            }
        }
    }

    pub fn explicit(&self) -> Option<&Word> {
        match self {
            RelationWord::Explicit { word } => Some(word),
            RelationWord::PowerProduct { .. } => None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CertificateChecks {
    pub nontrivial: bool,
    pub residual_ok: bool,
    /// `d(w, I)` at the probe pair (or the spread over the slice grid for power products).
    pub probe_value: f64,
    pub non_identical: bool,
    pub initial_residual: f64,
    /// Smallest singular value of the word Jacobian at the base pair.
    pub jacobian_sigma_min: Option<f64>,
    /// `initial_residual / jacobian_sigma_min`.
    pub newton_bound: Option<f64>,
    pub newton_iterations: usize,
}

#[derive(Clone, Debug)]
pub struct RelationCertificate {
    pub base_pair: Tuple,
    pub word: RelationWord,
    pub perturbed_pair: Tuple,
    pub residual: f64,
    pub pair_dist: f64,
    pub l_k: f64,
    pub level: usize,
    pub method: RelationMethod,
    /// Seed word the relation was grown from (net-Newton only).
    pub seed_word: Option<Word>,
    pub checks: CertificateChecks,
}

impl RelationCertificate {
    pub fn is_valid(&self) -> bool {
        self.checks.nontrivial && self.checks.residual_ok && self.checks.non_identical
    }

    pub fn to_json(&self) -> serde_json::Value {
        let pair = |t: &Tuple| t.elements().iter().map(|g| g.entries()).collect::<Vec<_>>();
        serde_json::json!({
            "group": self.base_pair.kind(),
            "method": self.method,
            "level": self.level,
            "word": self.word,
            "l_k": self.l_k,
            "seed_word": self.seed_word,
            "base_pair": pair(&self.base_pair),
            "perturbed_pair": pair(&self.perturbed_pair),
            "residual": self.residual,
            "pair_dist": self.pair_dist,
            "checks": self.checks,
        })
    }
}

/// Fixed list of seed words in two symbols, all nontrivial and at most 12 letters.
pub fn seed_words() -> Vec<Word> {
    [
        "a b A B",
        "a a b A B A b a B A",
        "b a b A B a B A",
        "a b a B",
        "a b A B a b A B",
        "a a b A A B",
        "a b b A B B",
        "a b A b",
        "a a b A b b",
        "a b A B a B A b A b a B",
        "a b A B a b A B a b A B",
        "a b a b A B A B a b A B",
        "a a b A A B a b b A B B",
        "a a a b A A A B a b A B",
    ]
    .iter()
    .map(|s| Word::parse_text(s, 2).expect("seed words parse"))
    .collect()
}

/// Random pair at product distance just under `dist` from `t`.
fn probe_pair(t: &Tuple, dist: f64, seed: u64) -> Tuple {
    let n = t.kind().spec().algebra_dim * t.len();
    let mut rng = sampling::rng(seed);
    let raw = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let mut xi = raw.normalize() * (0.5 * dist);
    for _ in 0..4 {
        let d = t.perturbed(&xi).distance(t);
        if d <= 0.0 {
            break;
        }
        xi *= 0.99 * dist / d;
    }
    t.perturbed(&xi)
}

fn residual_of(w: &Word, t: &Tuple) -> f64 {
    dist_to_identity(&t.evaluator().eval(w))
}

fn pseudo_solve(j: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let svd = j.clone().svd(true, true);
    let tol = 1e-12 * svd.singular_values.max();
    svd.solve(rhs, tol).expect("svd has both factors")
}

fn sigma_min_rows(j: &DMatrix<f64>) -> f64 {
    // the Jacobian is wide, so the relevant singular values are the row count
    j.singular_values().min()
}

pub struct NewtonOutcome {
    pub pair: Tuple,
    pub residual: f64,
    pub iterations: usize,
}

/// Solve `w(t) = I` from `t` with damped least-norm steps
/// `xi = -J^T (J J^T + lambda I)^-1 Log w(t)`.
///
/// lambda follows the gain-ratio rule: shrink after a step that does as well as the linear
/// model predicts, grow geometrically after a rejected one.
pub fn newton_correct(w: &Word, t: &Tuple, tol: f64, max_iter: usize) -> Result<NewtonOutcome> {
    let mut cur = t.clone();
    let mut log = cur.evaluator().eval(w).log()?.coords;
    let mut res = residual_of(w, &cur);
    let mut it = 0;
    let mut lambda = 1e-8;
    let mut nu = 2.0;
    while res > tol {
        if it == max_iter {
            return Err(LieError::Correction { msg: format!("no convergence in {max_iter} steps"), best_residual: res });
        }
        it += 1;
        let j = word_jacobian(w, &cur)?;
        let jjt = &j * j.transpose();
        let scale = jjt.diagonal().max();
        let f2 = log.norm_squared();
        let mut accepted = false;
        for _ in 0..60 {
            let mut a = jjt.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += lambda * scale;
            }
            let y = match a.clone().cholesky() {
                Some(c) => c.solve(&log),
                None => pseudo_solve(&a, &log),
            };
            let step = -(j.transpose() * &y);
            let predicted = f2 - (&log + &j * &step).norm_squared();
            let cand = cur.perturbed(&step);
            let cand_log = cand.evaluator().eval(w).log();
            let gain = match &cand_log {
                Ok(l) if predicted > 0.0 => (f2 - l.coords.norm_squared()) / predicted,
                _ => -1.0,
            };
            if gain > 0.0 {
                lambda *= (1.0 - (2.0 * gain - 1.0).powi(3)).max(1.0 / 3.0);
                lambda = lambda.max(1e-15);
                nu = 2.0;
                cur = cand;
                log = cand_log?.coords;
                res = residual_of(w, &cur);
                accepted = true;
                break;
            }
            lambda *= nu;
            nu *= 2.0;
        }
        if !accepted {
            return Err(LieError::Correction { msg: format!("residual plateau after {it} steps"), best_residual: res });
        }
    }
    Ok(NewtonOutcome { pair: cur, residual: res, iterations: it })
}

fn probe_seed(t: &Tuple, level: usize) -> u64 {
    u64::from_str_radix(&t.hash_hex()[..12], 16).unwrap_or(0) ^ level as u64
}

/// Relation at SK depth `level`: `w' = reduce(w_r * omega)` with `omega(pair)` approximating
/// `w_r(pair)^-1`, then Newton on the pair space.
pub fn find_relation_net_newton(pair: &Tuple, sk: &SkLevelState, level: usize) -> Result<RelationCertificate> {
    if sk.base.tuple.hash_hex() != pair.hash_hex() {
        return Err(LieError::Usage("SK state was built on another pair".into()));
    }
    if pair.len() != 2 {
        return Err(LieError::Usage("relations are searched for pairs".into()));
    }
    let ev = pair.evaluator();
    let mut stalled: Option<LieError> = None;
    for wr in seed_words() {
        let inv = ev.eval(&wr).inverse();
        if !sk.base.region.contains(&inv) {
            continue;
        }
        let approx = sk.approximate(&inv, level)?;
        let w = wr.concat(&approx.word);
        if w.is_empty() {
            continue;
        }
        // a stalled correction usually means Newton ran into a singular point of the
        // relation variety; the next seed gives a different word
        let out = match newton_correct(&w, pair, RESIDUAL_TOL, NEWTON_MAX_ITER) {
            Ok(o) => o,
            Err(e @ LieError::Correction { .. }) => {
                stalled.get_or_insert(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        let initial_residual = residual_of(&w, pair);
        let smin = sigma_min_rows(&word_jacobian(&w, pair)?);
        let probe = probe_pair(pair, PROBE_DIST, probe_seed(pair, level));
        let probe_value = residual_of(&w, &probe);
        return Ok(RelationCertificate {
            base_pair: pair.clone(),
            pair_dist: out.pair.distance(pair),
            perturbed_pair: out.pair,
            residual: out.residual,
            l_k: w.len() as f64,
            level,
            method: RelationMethod::NetNewton,
            seed_word: Some(wr),
            checks: CertificateChecks {
                nontrivial: !w.is_empty(),
                residual_ok: out.residual <= RESIDUAL_TOL,
                probe_value,
                non_identical: probe_value >= PROBE_MIN,
                initial_residual,
                jacobian_sigma_min: Some(smin),
                newton_bound: (smin > 0.0).then(|| initial_residual / smin),
                newton_iterations: out.iterations,
            },
            word: RelationWord::Explicit { word: w },
        });
    }
    Err(stalled.unwrap_or_else(|| LieError::Search("every seed word reduced to the empty word".into())))
}

#[derive(Clone, Debug)]
pub struct RelationCurve {
    pub certificates: Vec<RelationCertificate>,
    pub failures: Vec<(usize, String)>,
    pub fit: RateFit,
}

/// One certificate per level `1..=levels` and the fit of `ln(-ln pair_dist)` on `ln l_k`.
pub fn relation_rate_curve(pair: &Tuple, sk: &SkLevelState, levels: usize) -> Result<RelationCurve> {
    if levels < 2 {
        return Err(LieError::Usage("a rate curve needs at least two levels".into()));
    }
    if levels > sk.depth() {
        return Err(LieError::Usage(format!("SK state has {} levels, {levels} requested", sk.depth())));
    }
    let mut certificates = Vec::new();
    let mut failures = Vec::new();
    for k in 1..=levels {
        match find_relation_net_newton(pair, sk, k) {
            Ok(c) => certificates.push(c),
            Err(e) => failures.push((k, e.to_string())),
        }
    }
    let points: Vec<(f64, f64)> = certificates.iter().map(|c| (c.l_k, c.pair_dist)).collect();
    let mut fit = fit_rate(&points, kappa_theory(sk.mode()));
    fit.pass &= failures.is_empty();
    Ok(RelationCurve { certificates, failures, fit })
}

/// `w_k(alpha(u)) = omega_2k(alpha(u))^-1 omega_k(alpha(u))`.
fn power_relation_value(spec: &PsiSpec, k: usize, u: &DVector<f64>) -> Result<GroupElement> {
    let long = spec.omega_value(2 * k, u)?;
    let short = spec.omega_value(k, u)?;
    Ok(long.inverse().mul(&short))
}

fn power_terms(spec: &PsiSpec, k: usize) -> Vec<PowerTerm> {
    spec.factors
        .iter()
        .enumerate()
        .map(|(j, f)| PowerTerm { g: f.g.clone(), h: spec.h.clone(), depth: k, exponent: spec.exponent(j, k) })
        .collect()
}

/// Solve `w_k(alpha(u~/k)) = I` on the slice with `w_k = omega_2k^-1 omega_k`.
///
/// Newton in `u~` with a central-difference Jacobian; leaving the box `D_delta` is a
/// basin error.
pub fn find_relation_commutator_power(spec: &PsiSpec, k: usize) -> Result<RelationCertificate> {
    if spec.kind() != GroupKind::Sl2r {
        return Err(LieError::Usage("commutator powers are solved in SL(2,R)".into()));
    }
    if !(spec.sigma_min >= 1e-4) {
        return Err(LieError::Usage(format!("spec rejected: smallest singular value {:.3e}", spec.sigma_min)));
    }
    if k == 0 {
        return Err(LieError::Usage("k must be positive".into()));
    }
    let n = spec.slice.dim();
    let kf = k as f64;
    let radius = spec.domain_radius;
    let f = |ut: &DVector<f64>| -> Result<DVector<f64>> { Ok(power_relation_value(spec, k, &(ut / kf))?.log()?.coords) };
    let mut ut = DVector::zeros(n);
    let mut val = f(&ut)?;
    let initial_residual = dist_to_identity(&power_relation_value(spec, k, &ut)?);
    let fd = 1e-4 * radius;
    let mut iterations = 0;
    let mut res = initial_residual;
    let mut jac0_smin = None;
    while res > RESIDUAL_TOL {
        if iterations == NEWTON_MAX_ITER {
            return Err(LieError::Correction { msg: "slice Newton did not converge".into(), best_residual: res });
        }
        iterations += 1;
        let mut jac = DMatrix::zeros(n, n);
        for i in 0..n {
            let mut e = DVector::zeros(n);
            e[i] = fd;
            jac.set_column(i, &((f(&(&ut + &e))? - f(&(&ut - &e))?) / (2.0 * fd)));
        }
        jac0_smin.get_or_insert_with(|| jac.singular_values().min());
        let step = -pseudo_solve(&jac, &val);
        let mut alpha = 1.0;
        let mut next = None;
        for _ in 0..12 {
            let cand = &ut + &step * alpha;
            if cand.amax() > radius {
                alpha *= 0.5;
                continue;
            }
            let r = dist_to_identity(&power_relation_value(spec, k, &cand)?);
            if r < res {
                next = Some((cand, r));
                break;
            }
            alpha *= 0.5;
        }
        match next {
            Some((cand, r)) => {
                ut = cand;
                res = r;
                val = f(&ut)?;
            }
            None if (&ut + &step).amax() > radius => {
                return Err(LieError::Basin(format!("Newton leaves D_delta at k = {k}; increase k")));
            }
            None => {
                return Err(LieError::Correction { msg: "slice Newton stalled".into(), best_residual: res });
            }
        }
    }
    let u = &ut / kf;
    let perturbed = spec.slice.at(&u);
    // non-constancy across D_delta / k stands in for the probe; the words are too long to evaluate elsewhere
    let grid = cube_grid(n, 3, radius);
    let values: Vec<GroupElement> =
        grid.iter().map(|g| power_relation_value(spec, k, &(g / kf))).collect::<Result<_>>()?;
    let spread = values.iter().map(|v| distance(v, &values[0])).fold(0.0, f64::max);
    let word = RelationWord::PowerProduct { inverse: power_terms(spec, 2 * k), terms: power_terms(spec, k) };
    Ok(RelationCertificate {
        base_pair: spec.slice.base.clone(),
        pair_dist: perturbed.distance(&spec.slice.base),
        perturbed_pair: perturbed,
        residual: res,
        l_k: word.letter_bound(),
        level: k,
        method: RelationMethod::CommutatorPower,
        seed_word: None,
        checks: CertificateChecks {
            nontrivial: spread >= PROBE_MIN,
            residual_ok: res <= RESIDUAL_TOL,
            probe_value: spread,
            non_identical: spread >= PROBE_MIN,
            initial_residual,
            jacobian_sigma_min: jac0_smin,
            newton_bound: jac0_smin.map(|s| initial_residual / s),
            newton_iterations: iterations,
        },
        word,
    })
}

/// Word that is trivial on every group of derived length `<= s + 1` containing the
/// values of `w` in an abelian normal subgroup: `sigma_{s,1}` of the recursion
/// `sigma_{i+1,0} = [sigma_{i,0}, sigma_{i,1}]`, `sigma_{i+1,1} = [sigma_{i,0}, sigma_{i,1}^-1]`
/// started from `sigma_{0,0} = w`, `sigma_{0,1} = [a, w]`.
pub fn solvable_lift(word: &Word, s: usize) -> Result<Word> {
    if word.is_empty() {
        return Err(LieError::Usage("solvable lift of the empty word".into()));
    }
    let alphabet = word.max_symbol().max(2);
    let first = Word::reduce(&[1], alphabet)?;
    let second = Word::reduce(&[2], alphabet)?;
    for a in [first, second] {
        let mut s0 = word.clone();
        let mut s1 = a.commutator(word);
        if s1.is_empty() {
            continue;
        }
        for _ in 0..s {
            let next0 = s0.commutator(&s1);
            let next1 = s0.commutator(&s1.inverse());
            s0 = next0;
            s1 = next1;
        }
        if s1.is_empty() {
            continue;
        }
        let bound = 4usize.pow(s as u32 + 1) * word.len();
        if s1.len() > bound {
            return Err(LieError::Size(format!("lift has {} letters, bound {bound}", s1.len())));
        }
        return Ok(s1);
    }
    Err(LieError::Usage(format!("{word} commutes with both symbols")))
}

#[derive(Clone, Debug, Serialize)]
pub struct AffineStep {
    pub k: usize,
    #[serde(serialize_with = "as_decimal")]
    pub m_k: BigUint,
    pub s_k: f64,
    pub gap: f64,
    /// `d((g^k t g^-k)^m_k, t)` with `g` the scaling by `s_k` and `t` the unit translation.
    pub relation_residual: f64,
    /// `s0^-k` is itself an integer, so the floor is a tie.
    pub floor_tie: bool,
}

fn as_decimal<S: serde::Serializer>(v: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_str_radix(10))
}

/// `floor(s0^-k)` computed exactly from the binary value of `s0`.
fn exact_floor_inverse_power(s0: f64, k: usize) -> (BigUint, bool) {
    let bits = s0.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let (mant, e) = if exp == 0 { (bits & ((1 << 52) - 1), -1074) } else { ((bits & ((1 << 52) - 1)) | (1 << 52), exp - 1075) };
    // s0 = mant * 2^e with e < 0, so s0^-k = 2^(-e k) / mant^k
    let num = BigUint::from(1u8) << ((-e) as usize * k);
    let den = BigUint::from(mant).pow(k as u32);
    let q = &num / &den;
    let tie = (&num % &den).is_zero();
    (q, tie)
}

fn affine(kind_a: f64, b: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[kind_a, b, 0.0, 1.0])
}

fn unipotent_power(x: &DMatrix<f64>, m: &BigUint) -> DMatrix<f64> {
    let mut acc = DMatrix::<f64>::identity(2, 2);
    let mut sq = x.clone();
    let bits = m.bits();
    for i in 0..bits {
        if m.bit(i) {
            acc = &acc * &sq;
        }
        sq = &sq * &sq;
    }
    acc
}

/// Closed-form relations `(g^k t g^-k)^{m_k} = t` in the affine group.
pub fn affine_relation_sequence(s0: f64, k_max: usize) -> Result<Vec<AffineStep>> {
    if !(s0 > 0.0 && s0 < 1.0) {
        return Err(LieError::Usage(format!("s0 = {s0} is not in (0, 1)")));
    }
    let t = affine(1.0, 1.0);
    (1..=k_max)
        .map(|k| {
            let (m, floor_tie) = exact_floor_inverse_power(s0, k);
            let mf = m.to_f64().unwrap_or(f64::INFINITY);
            let s_k = (-mf.ln() / k as f64).exp();
            let a = s_k.powi(k as i32);
            // right action of g^-k as a division: a * (1/a) can miss 1 by an ulp, and
            // m_k squarings would blow that up
            let mut conj = &affine(a, 0.0) * &t;
            conj[(0, 0)] /= a;
            let rel = unipotent_power(&conj, &m);
            let relation_residual = crate::lie::distance(
                &GroupElement::new(GroupKind::Aff1, rel)?,
                &GroupElement::new(GroupKind::Aff1, t.clone())?,
            );
            Ok(AffineStep { k, m_k: m, s_k, gap: (s_k - s0).abs(), relation_residual, floor_tie })
        })
        .collect()
}

/// `sup |m_k (s0 + u~/k)^k - e^{u~/s0}|` over `grid` for each k.
pub fn affine_limit_error(s0: f64, ks: &[usize], grid: &[f64]) -> Vec<(usize, f64)> {
    ks.iter()
        .map(|&k| {
            let (m, _) = exact_floor_inverse_power(s0, k);
            let mf = m.to_f64().unwrap_or(f64::INFINITY);
            let kf = k as f64;
            let err = grid
                .iter()
                .map(|&u| {
                    // m (s0 + u/k)^k = (m s0^k) (1 + u/(k s0))^k
                    let scale = (mf.ln() + kf * s0.ln()).exp();
                    (scale * (kf * (u / (kf * s0)).ln_1p()).exp() - (u / s0).exp()).abs()
                })
                .fold(0.0, f64::max);
            (k, err)
        })
        .collect()
}
