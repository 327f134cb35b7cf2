//! Recursive refinement of a base word net.
//!
//! Level m answers a query by taking the level m-1 word `w`, factoring the residual
//! `w^-1 T` into one or two group commutators and replacing each commutator entry by its
//! own level m-1 approximation. Word lengths grow by the factor 9 (weak) or 5 (strong).

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::commutator::{group_commutator_factor, Calibration, Factorizer, SkMode, FACTOR_REGIME};
use crate::error::{LieError, Result};
use crate::lie::{dist_to_identity, distance, GroupElement};
use crate::net::WordNet;
use crate::sampling::halton_ball;
use crate::stats::{linear_fit, median};
use crate::words::{word_jacobian, Word};

/// `ln 1.5 / ln 9`.
pub fn kappa_weak() -> f64 {
    1.5f64.ln() / 9f64.ln()
}

/// `ln 1.5 / ln 5`.
pub fn kappa_strong() -> f64 {
    1.5f64.ln() / 5f64.ln()
}

pub fn kappa_theory(mode: SkMode) -> f64 {
    match mode {
        SkMode::Weak => kappa_weak(),
        SkMode::Strong => kappa_strong(),
    }
}

/// `l_m = f^(m-1) l_1` with `f = 9` (weak) or `5` (strong).
pub fn length_majorant(mode: SkMode, l1: usize, m: usize) -> usize {
    let f = mode.length_factor();
    (1..m).fold(l1, |l, _| l.saturating_mul(f))
}

#[derive(Clone, Debug)]
pub struct SkParams {
    /// `1.2 * c_w` from the calibration.
    pub c_prime: f64,
    /// Calibrated commutator contraction constant.
    pub c_dd: f64,
    /// Measurement targets per level.
    pub targets: usize,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct SkLevel {
    pub m: usize,
    pub l_m: usize,
    /// Largest error over the measurement targets.
    pub delta: f64,
    pub median: f64,
    /// Words produced for the measurement targets.
    pub omega: Vec<Word>,
    /// Near-identity words: commutator products at levels above one.
    pub omega_tilde: Vec<Word>,
    /// Targets whose residual left the factoring regime.
    pub regime_fallbacks: usize,
    /// Largest operator norm of the word Jacobian at the base pair over `omega`.
    pub max_derivative_norm: f64,
}

pub struct SkLevelState {
    pub base: WordNet,
    pub factorizer: Factorizer,
    pub params: SkParams,
    pub levels: Vec<SkLevel>,
    pub degenerate: bool,
    targets: Vec<GroupElement>,
}

#[derive(Clone, Debug)]
pub struct Approximation {
    pub word: Word,
    /// `d(w(A, B), target)`, recomputed from the returned word.
    pub dist: f64,
    pub regime_fallback: bool,
}

struct Descent {
    word: Word,
    value: GroupElement,
    fallback: bool,
    tilde: Option<Word>,
}

fn jacobian_norm(w: &Word, base: &WordNet) -> f64 {
    word_jacobian(w, &base.tuple)
        .map(|j| j.singular_values().max())
        .unwrap_or(f64::NAN)
}

impl SkLevelState {
    /// Level-one state over a base net on a ball at the identity.
    pub fn init_levels(base: WordNet, factorizer: Factorizer, cal: &Calibration, targets: usize, seed: u64) -> Result<Self> {
        let kind = base.tuple.kind();
        if factorizer.kind() != kind {
            return Err(LieError::Usage("solver and net belong to different groups".into()));
        }
        if !base.region.center.is_identity(0.0) {
            return Err(LieError::Usage("base net must cover a ball at the identity".into()));
        }
        if base.is_empty() {
            return Err(LieError::Usage("empty base net".into()));
        }
        let delta = base.claimed_radius;
        let degenerate = base.flags.degenerate || base.entries().iter().all(|e| e.word.is_empty());
        if !degenerate && cal.c_dd * delta.powf(1.5) >= delta {
            return Err(LieError::Regime(format!(
                "c'' delta^1.5 = {:.4} is not below delta = {delta:.4}; build a longer base net",
                cal.c_dd * delta.powf(1.5)
            )));
        }
        let params = SkParams { c_prime: 1.2 * cal.c_w, c_dd: cal.c_dd, targets, seed };
        let targets_el: Vec<GroupElement> = halton_ball(kind, targets, base.region.radius, seed)
            .iter()
            .map(|v| v.exp())
            .collect();
        let l1 = base.max_word_length;
        let tilde_radius = 2.0 * params.c_prime * delta.sqrt();
        let omega_tilde: Vec<Word> = if degenerate {
            vec![Word::empty()]
        } else {
            base.entries()
                .iter()
                .filter(|e| dist_to_identity(&e.element) <= tilde_radius)
                .map(|e| e.word.clone())
                .collect()
        };
        let hits: Vec<(Word, f64)> = targets_el
            .par_iter()
            .map(|t| {
                let (w, _, d) = base.nearest_entry(t)?;
                Ok((w.clone(), d))
            })
            .collect::<Result<_>>()?;
        let errs: Vec<f64> = hits.iter().map(|h| h.1).collect();
        let mut omega: Vec<Word> = hits.into_iter().map(|h| h.0).collect();
        omega.sort();
        omega.dedup();
        let max_derivative_norm = omega.par_iter().map(|w| jacobian_norm(w, &base)).reduce(|| 0.0, f64::max);
        let level = SkLevel {
            m: 1,
            l_m: l1,
            delta: errs.iter().copied().fold(0.0, f64::max),
            median: median(&errs),
            omega,
            omega_tilde,
            regime_fallbacks: 0,
            max_derivative_norm,
        };
        Ok(SkLevelState { base, factorizer, params, levels: vec![level], degenerate, targets: targets_el })
    }

    pub fn mode(&self) -> SkMode {
        self.factorizer.mode()
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn l1(&self) -> usize {
        self.levels[0].l_m
    }

    fn descend(&self, target: &GroupElement, m: usize) -> Result<Descent> {
        if m == 1 {
            let (w, g, _) = self.base.nearest_entry(target)?;
            return Ok(Descent { word: w.clone(), value: g.clone(), fallback: false, tilde: None });
        }
        let prev = self.descend(target, m - 1)?;
        let r = prev.value.inverse().mul(target);
        let dr = dist_to_identity(&r);
        if dr == 0.0 {
            return Ok(prev);
        }
        if dr > FACTOR_REGIME {
            return Ok(Descent { fallback: true, ..prev });
        }
        let factor = match group_commutator_factor(&self.factorizer, &r) {
            Ok(f) => f,
            Err(LieError::Regime(_)) | Err(LieError::Chart { .. }) => return Ok(Descent { fallback: true, ..prev }),
            Err(e) => return Err(e),
        };
        let mut tilde = Word::empty();
        let mut value = GroupElement::identity(target.kind());
        let mut fallback = prev.fallback;
        for (x, y) in &factor.pairs {
            let dx = self.descend(x, m - 1)?;
            let dy = self.descend(y, m - 1)?;
            fallback |= dx.fallback || dy.fallback;
            tilde = tilde.concat(&dx.word.commutator(&dy.word));
            value = value.mul(&dx.value.comm(&dy.value));
        }
        Ok(Descent {
            word: prev.word.concat(&tilde),
            value: prev.value.mul(&value),
            fallback,
            tilde: Some(tilde),
        })
    }

    /// Word approximating `target` at the given depth.
    pub fn approximate(&self, target: &GroupElement, depth: usize) -> Result<Approximation> {
        if depth == 0 || depth > self.depth() {
            return Err(LieError::Usage(format!("depth {depth} not in 1..={}", self.depth())));
        }
        if target.kind() != self.base.tuple.kind() {
            return Err(LieError::Usage("target lies in another group".into()));
        }
        let d = self.descend(target, depth)?;
        let value = self.base.tuple.evaluator().eval(&d.word);
        Ok(Approximation { dist: distance(&value, target), word: d.word, regime_fallback: d.fallback })
    }

    /// Build the next level and measure it on the stored targets.
    pub fn refine_level(&mut self) -> Result<&SkLevel> {
        let prev = self.levels.last().expect("level one exists").clone();
        if self.degenerate {
            let mut same = prev;
            same.m += 1;
            self.levels.push(same);
            return Ok(self.levels.last().expect("just pushed"));
        }
        let m = prev.m + 1;
        // the new level must be in place for descend to reach depth m
        let runs: Vec<Descent> = self
            .targets
            .par_iter()
            .map(|t| self.descend(t, m))
            .collect::<Result<_>>()?;
        let ev = self.base.tuple.evaluator();
        let errs: Vec<f64> = runs
            .par_iter()
            .zip(&self.targets)
            .map(|(r, t)| distance(&ev.eval(&r.word), t))
            .collect();
        let delta = errs.iter().copied().fold(0.0, f64::max);
        let l_m = length_majorant(self.mode(), self.l1(), m);
        if let Some(w) = runs.iter().find(|r| r.word.len() > l_m) {
            return Err(LieError::Size(format!("level {m} word of length {} exceeds l_m = {l_m}", w.word.len())));
        }
        if delta >= prev.delta {
            return Err(LieError::Stagnation(format!(
                "level {m}: measured delta {delta:.6e} did not improve on {:.6e} (median {:.6e}, {} regime fallbacks)",
                prev.delta,
                median(&errs),
                runs.iter().filter(|r| r.fallback).count()
            )));
        }
        let regime_fallbacks = runs.iter().filter(|r| r.fallback).count();
        let mut omega: Vec<Word> = runs.iter().map(|r| r.word.clone()).collect();
        omega.sort();
        omega.dedup();
        let mut omega_tilde: Vec<Word> = runs.iter().filter_map(|r| r.tilde.clone()).collect();
        omega_tilde.sort();
        omega_tilde.dedup();
        let max_derivative_norm = omega.par_iter().map(|w| jacobian_norm(w, &self.base)).reduce(|| 0.0, f64::max);
        self.levels.push(SkLevel {
            m,
            l_m,
            delta,
            median: median(&errs),
            omega,
            omega_tilde,
            regime_fallbacks,
            max_derivative_norm,
        });
        Ok(self.levels.last().expect("just pushed"))
    }

    /// Per-level errors on fresh targets and the rate fit.
    pub fn rate_report(&self, samples: usize, seed: u64) -> Result<RateReport> {
        if self.depth() < 2 {
            return Err(LieError::Usage("rate report needs at least two levels".into()));
        }
        let start = Instant::now();
        let kind = self.base.tuple.kind();
        let targets: Vec<GroupElement> = halton_ball(kind, samples, self.base.region.radius, seed)
            .iter()
            .map(|v| v.exp())
            .collect();
        let mut rows = Vec::new();
        for lvl in &self.levels {
            let errs: Vec<f64> = targets
                .par_iter()
                .map(|t| self.approximate(t, lvl.m).map(|a| a.dist))
                .collect::<Result<_>>()?;
            rows.push(RateRow {
                m: lvl.m,
                l_m: lvl.l_m,
                max_err: errs.iter().copied().fold(0.0, f64::max),
                median_err: median(&errs),
            });
        }
        let fit = fit_rate(
            &rows.iter().map(|r| (r.l_m as f64, r.max_err)).collect::<Vec<_>>(),
            kappa_theory(self.mode()),
        );
        Ok(RateReport {
            mode: self.mode(),
            samples,
            seed,
            levels: rows,
            fit,
            runtime_secs: start.elapsed().as_secs_f64(),
        })
    }

    /// Regression slope of `ln delta_{m+1}` on `ln delta_m`; needs three levels.
    pub fn contraction_exponent(&self) -> Option<f64> {
        if self.depth() < 3 {
            return None;
        }
        let x: Vec<f64> = self.levels.windows(2).map(|w| w[0].delta.ln()).collect();
        let y: Vec<f64> = self.levels.windows(2).map(|w| w[1].delta.ln()).collect();
        Some(linear_fit(&x, &y).1)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RateRow {
    pub m: usize,
    pub l_m: usize,
    pub max_err: f64,
    pub median_err: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RateFit {
    /// Slope of `ln(-ln err)` on `ln l`, with its standard error.
    pub kappa_hat: f64,
    pub kappa_se: f64,
    pub kappa: f64,
    /// Largest `c` with `err <= exp(-(c l)^kappa)` at every used level.
    pub c_hat: f64,
    /// Least-squares `c` at fixed kappa.
    pub c_ls: f64,
    /// Levels with `err < 1`, the only ones where `-ln err` is positive.
    pub used: usize,
    pub pass: bool,
}

/// Fit `err ~ exp(-(c l)^kappa)` to `(l, err)` points.
pub fn fit_rate(points: &[(f64, f64)], kappa: f64) -> RateFit {
    let used: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|&(l, e)| l > 0.0 && e > 0.0 && e < 1.0)
        .collect();
    let x: Vec<f64> = used.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = used.iter().map(|p| (-p.1.ln()).ln()).collect();
    let (kappa_hat, kappa_se) = if used.len() >= 2 {
        let (_, b, se) = linear_fit(&x, &y);
        (b, se)
    } else {
        (f64::NAN, f64::NAN)
    };
    let per: Vec<f64> = used.iter().map(|&(l, e)| (-e.ln()).powf(1.0 / kappa) / l).collect();
    let c_hat = per.iter().copied().fold(f64::INFINITY, f64::min);
    let c_ls = if per.is_empty() {
        f64::NAN
    } else {
        (per.iter().map(|c| c.ln()).sum::<f64>() / per.len() as f64).exp()
    };
    let pass = used.len() == points.len()
        && c_hat.is_finite()
        && c_hat > 0.0
        && used
            .iter()
            .all(|&(l, e)| e <= (-(c_hat * l).powf(kappa)).exp() * (1.0 + 1e-12));
    RateFit { kappa_hat, kappa_se, kappa, c_hat, c_ls, used: used.len(), pass }
}

#[derive(Clone, Debug, Serialize)]
pub struct RateReport {
    pub mode: SkMode,
    pub samples: usize,
    pub seed: u64,
    pub levels: Vec<RateRow>,
    pub fit: RateFit,
    pub runtime_secs: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kappa_values() {
        assert!((kappa_weak() - 0.184_53).abs() < 1e-5);
        assert!((kappa_strong() - 0.251_93).abs() < 1e-5);
    }

    #[test]
    fn length_law() {
        assert_eq!(length_majorant(SkMode::Weak, 10, 1), 10);
        assert_eq!(length_majorant(SkMode::Weak, 10, 3), 810);
        assert_eq!(length_majorant(SkMode::Strong, 10, 3), 250);
    }

    #[test]
    fn fit_recovers_its_own_model() {
        let k = kappa_weak();
        let pts: Vec<(f64, f64)> = (1..=4)
            .map(|m| {
                let l = 10.0 * 9f64.powi(m - 1);
                (l, (-(0.1 * l).powf(k)).exp())
            })
            .collect();
        let f = fit_rate(&pts, k);
        assert!((f.kappa_hat - k).abs() < 1e-3);
        assert!((f.c_hat - 0.1).abs() < 1e-9);
        assert!(f.pass);
    }
}
