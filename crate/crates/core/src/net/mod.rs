//! Finite word nets over balls of a group.
//!
//! Entries are indexed by their matrix entries in a kd-tree. A query first takes a few
//! Frobenius neighbours to get an upper bound `d*` on the true distance, then collects
//! every entry inside the Frobenius ball that must contain all entries at distance
//! `<= d*`, using `|e - t|_F <= |t|_op (exp(d) - 1)`. The result is the exact argmin of
//! the group distance.

mod build;
pub mod cache;

use kdtree::distance::squared_euclidean;
use kdtree::KdTree;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LieError, Result};
use crate::lie::{distance, AlgebraElement, GroupElement};
use crate::sampling;
use crate::stats;
use crate::words::{Tuple, Word};

pub use build::{build_base_net, BuildOptions};

/// Ties within this distance go to the shortlex-smaller word.
pub const TIE_TOL: f64 = 1e-12;
/// Validation sample count used unless overridden.
pub const VALIDATION_SAMPLES: usize = 10_000;

/// Closed ball `{ g : d(center, g) <= radius }`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ball {
    pub center: GroupElement,
    pub radius: f64,
}

impl Ball {
    /// The ball of the given radius at the identity.
    pub fn at_identity(kind: crate::lie::GroupKind, radius: f64) -> Ball {
        Ball { center: GroupElement::identity(kind), radius }
    }

    pub fn contains(&self, g: &GroupElement) -> bool {
        distance(&self.center, g) <= self.radius
    }
}

#[derive(Clone, Debug)]
pub struct NetEntry {
    pub word: Word,
    pub element: GroupElement,
    /// `Log(center^-1 element)` when that lies in the chart.
    pub coords: Option<AlgebraElement>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub samples: usize,
    pub seed: u64,
    pub max_dist: f64,
    pub quantile_99: f64,
    pub mean_dist: f64,
    /// Fraction of samples within the claimed radius.
    pub covered_fraction: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetFlags {
    /// Only the identity is available (trivial generators or empty input).
    pub degenerate: bool,
    /// The length budget ran out before the target radius was reached.
    pub partial: bool,
}

/// Answer of a nearest query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NearestHit {
    pub index: usize,
    pub dist: f64,
    /// The target lies in the region but the hit is farther than the claimed radius.
    pub defect: bool,
}

type Index = KdTree<f64, usize, Vec<f64>>;

pub struct WordNet {
    pub tuple: Tuple,
    entries: Vec<NetEntry>,
    pub region: Ball,
    pub claimed_radius: f64,
    pub max_word_length: usize,
    pub validation: ValidationRecord,
    pub flags: NetFlags,
    pub target_delta: f64,
    pub dedup_radius: f64,
    index: Index,
}

impl std::fmt::Debug for WordNet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WordNet")
            .field("group", &self.tuple.kind())
            .field("entries", &self.entries.len())
            .field("claimed_radius", &self.claimed_radius)
            .field("max_word_length", &self.max_word_length)
            .field("flags", &self.flags)
            .finish()
    }
}

fn flatten(m: &DMatrix<f64>) -> Vec<f64> {
    m.as_slice().to_vec()
}

/// Upper bound for the operator norm of `t`.
fn op_norm_bound(t: &GroupElement) -> f64 {
    if t.kind().is_compact() {
        1.0
    } else {
        t.matrix().clone().svd(false, false).singular_values.max()
    }
}

fn frob_radius(t: &GroupElement, d: f64) -> f64 {
    op_norm_bound(t) * d.exp_m1() * (1.0 + 1e-9) + 1e-12
}

impl WordNet {
    /// Assemble a net from entries, sorting them shortlex and building the index.
    pub(crate) fn assemble(
        tuple: Tuple,
        mut entries: Vec<NetEntry>,
        region: Ball,
        max_word_length: usize,
        target_delta: f64,
        dedup_radius: f64,
    ) -> WordNet {
        entries.sort_by(|a, b| a.word.cmp(&b.word));
        let index = build_index(&entries, tuple.kind().spec().matrix_dim);
        WordNet {
            tuple,
            entries,
            region,
            claimed_radius: f64::INFINITY,
            max_word_length,
            validation: ValidationRecord::default(),
            flags: NetFlags::default(),
            target_delta,
            dedup_radius,
            index,
        }
    }

    pub fn entries(&self) -> &[NetEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, i: usize) -> &NetEntry {
        &self.entries[i]
    }

    /// Exact nearest entry under the group distance, ties to the shortlex-smaller word.
    pub fn nearest(&self, target: &GroupElement) -> Result<NearestHit> {
        if self.entries.is_empty() {
            return Err(LieError::Usage("nearest on an empty net".into()));
        }
        let p = flatten(target.matrix());
        let k = self.entries.len().min(8);
        let seeds = self.index.nearest(&p, k, &squared_euclidean).expect("finite query");
        let d_star = seeds
            .iter()
            .map(|(_, &i)| distance(target, &self.entries[i].element))
            .fold(f64::INFINITY, f64::min);
        let cap = target.kind().spec().chart_cap();
        let hit = if d_star >= cap {
            self.nearest_linear(target)?
        } else {
            let r = frob_radius(target, d_star + TIE_TOL);
            let mut cands: Vec<usize> = self
                .index
                .within(&p, r * r, &squared_euclidean)
                .expect("finite query")
                .into_iter()
                .map(|(_, &i)| i)
                .collect();
            cands.sort_unstable();
            pick(cands.into_iter().map(|i| (i, distance(target, &self.entries[i].element))))
        };
        Ok(self.with_defect(target, hit))
    }

    /// Linear-scan oracle with the same tie rule as `nearest`.
    pub fn nearest_linear(&self, target: &GroupElement) -> Result<NearestHit> {
        if self.entries.is_empty() {
            return Err(LieError::Usage("nearest on an empty net".into()));
        }
        let hit = pick(
            self.entries
                .iter()
                .enumerate()
                .map(|(i, e)| (i, distance(target, &e.element))),
        );
        Ok(self.with_defect(target, hit))
    }

    /// `(word, element, dist)` of the nearest entry.
    pub fn nearest_entry(&self, target: &GroupElement) -> Result<(&Word, &GroupElement, f64)> {
        let hit = self.nearest(target)?;
        let e = &self.entries[hit.index];
        Ok((&e.word, &e.element, hit.dist))
    }

    fn with_defect(&self, target: &GroupElement, mut hit: NearestHit) -> NearestHit {
        hit.defect = hit.dist > self.claimed_radius && self.region.contains(target);
        hit
    }

    /// Seeded samples of the region.
    pub fn region_samples(&self, count: usize, seed: u64) -> Vec<GroupElement> {
        let mut rng = sampling::rng(seed);
        (0..count)
            .map(|_| sampling::random_element_in_ball(&self.region.center, self.region.radius, &mut rng))
            .collect()
    }

    /// Nearest distances for the given samples, computed in parallel.
    pub fn sample_distances(&self, samples: &[GroupElement]) -> Vec<f64> {
        samples
            .par_iter()
            .map(|s| self.nearest(s).map(|h| h.dist).unwrap_or(f64::INFINITY))
            .collect()
    }

    /// Measure coverage on `count` seeded region samples and set `claimed_radius` to the
    /// largest nearest distance seen.
    pub fn validate(&mut self, count: usize, seed: u64) -> &ValidationRecord {
        let samples = self.region_samples(count, seed);
        let d = self.sample_distances(&samples);
        let max = d.iter().cloned().fold(0.0, f64::max);
        self.claimed_radius = max;
        self.validation = ValidationRecord {
            samples: count,
            seed,
            max_dist: max,
            quantile_99: stats::quantile(&d, 0.99),
            mean_dist: d.iter().sum::<f64>() / d.len().max(1) as f64,
            covered_fraction: d.iter().filter(|x| **x <= max).count() as f64 / d.len().max(1) as f64,
        };
        &self.validation
    }

    /// Largest distance from an entry to the region (0 for entries inside).
    pub fn max_entry_excess(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| (distance(&self.region.center, &e.element) - self.region.radius).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Largest operator 2-norm of the word Jacobian over entries, at the base tuple.
    pub fn max_derivative_norm(&self) -> f64 {
        self.entries
            .par_iter()
            .map(|e| {
                crate::words::word_jacobian(&e.word, &self.tuple)
                    .map(|j| j.svd(false, false).singular_values.max())
                    .unwrap_or(f64::NAN)
            })
            .reduce(|| 0.0, f64::max)
    }
}

fn pick(it: impl Iterator<Item = (usize, f64)>) -> NearestHit {
    let all: Vec<(usize, f64)> = it.collect();
    let min = all.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    // entries are sorted shortlex, so the smallest index among near-ties wins
    let (index, dist) = all
        .iter()
        .filter(|x| x.1 <= min + TIE_TOL)
        .min_by_key(|x| x.0)
        .copied()
        .expect("nonempty candidate set");
    NearestHit { index, dist, defect: false }
}

fn build_index(entries: &[NetEntry], d: usize) -> Index {
    let mut index = Index::with_capacity(d * d, 16);
    for (i, e) in entries.iter().enumerate() {
        index.add(flatten(e.element.matrix()), i).expect("finite entries");
    }
    index
}

/// Net of products `w * w'` with `w` from `outer` and `w'` from `inner`.
///
/// `inner` must cover the identity ball whose radius is the outer claimed radius.
pub fn compose_nets(outer: &WordNet, inner: &WordNet, seed: u64) -> Result<WordNet> {
    let delta1 = outer.claimed_radius;
    if outer.tuple != inner.tuple {
        return Err(LieError::Usage("nets are built on different tuples".into()));
    }
    if !inner.region.center.is_identity(1e-12)
        || (inner.region.radius - delta1).abs() > 1e-9 * delta1.max(1.0)
    {
        return Err(LieError::Usage(format!(
            "inner region must be the identity ball of radius {delta1}, got radius {}",
            inner.region.radius
        )));
    }
    let keep = outer.region.radius + delta1 + inner.region.radius;
    let mut cands: Vec<(Word, GroupElement)> = outer
        .entries
        .par_iter()
        .flat_map_iter(|o| {
            inner.entries.iter().filter_map(move |i| {
                let g = o.element.mul(&i.element);
                (distance(&outer.region.center, &g) <= keep).then(|| (o.word.concat(&i.word), g))
            })
        })
        .collect();
    cands.sort_by(|a, b| a.0.cmp(&b.0));
    cands.dedup_by(|a, b| a.0 == b.0);
    let r_d = inner.dedup_radius;
    let kind = outer.tuple.kind();
    let mut entries: Vec<NetEntry> = Vec::new();
    let mut index = Index::with_capacity(kind.spec().matrix_dim.pow(2), 16);
    for (w, g) in cands {
        if is_duplicate(&index, &entries, &g, r_d) {
            continue;
        }
        index.add(flatten(g.matrix()), entries.len()).expect("finite entries");
        let coords = outer.region.center.inverse().mul(&g).log().ok();
        entries.push(NetEntry { word: w, element: g, coords });
    }
    let mut net = WordNet::assemble(
        outer.tuple.clone(),
        entries,
        outer.region.clone(),
        outer.max_word_length + inner.max_word_length,
        inner.target_delta,
        r_d,
    );
    net.validate(outer.validation.samples.max(1), seed);
    net.flags.degenerate = outer.flags.degenerate && inner.flags.degenerate;
    net.flags.partial = net.claimed_radius > inner.claimed_radius;
    Ok(net)
}

/// True when some stored entry lies within `r_d` of `g`.
pub(crate) fn is_duplicate(index: &Index, entries: &[NetEntry], g: &GroupElement, r_d: f64) -> bool {
    if entries.is_empty() || r_d <= 0.0 {
        return false;
    }
    let r = frob_radius(g, r_d);
    index
        .within(&flatten(g.matrix()), r * r, &squared_euclidean)
        .expect("finite query")
        .into_iter()
        .any(|(_, &i)| distance(g, &entries[i].element) <= r_d)
}
