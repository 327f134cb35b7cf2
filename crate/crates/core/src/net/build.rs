use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{flatten, is_duplicate, Ball, Index, NetEntry, WordNet, VALIDATION_SAMPLES};
use crate::error::{LieError, Result};
use crate::lie::{dist_to_identity, distance, GroupElement};
use crate::words::{alphabet_letters, Tuple, Word};

#[derive(Clone, Debug)]
pub struct BuildOptions {
    pub max_len: usize,
    pub region: Ball,
    pub target_delta: f64,
    /// Seed of the validation samples.
    pub seed: u64,
    pub validation_samples: usize,
    /// Words up to this length are screened for relations before anything is kept.
    pub screen_len: usize,
    pub screen_tol: f64,
    /// Candidates farther than `radius + keep_margin` from the center are discarded.
    pub keep_margin: f64,
    pub frontier_cap: usize,
}

impl BuildOptions {
    pub fn new(region: Ball) -> Self {
        BuildOptions {
            max_len: 10,
            region,
            target_delta: 0.05,
            seed: 0,
            validation_samples: VALIDATION_SAMPLES,
            screen_len: 8,
            screen_tol: 1e-8,
            keep_margin: 0.5,
            frontier_cap: 4_000_000,
        }
    }
}

struct Frontier {
    words: Vec<Vec<i32>>,
    mats: Vec<DMatrix<f64>>,
}

fn expand(f: &Frontier, ev: &crate::words::Evaluator, letters: &[i32]) -> Frontier {
    let pairs: Vec<(Vec<i32>, DMatrix<f64>)> = f
        .words
        .par_iter()
        .zip(f.mats.par_iter())
        .flat_map_iter(|(w, m)| {
            let last = w.last().copied();
            letters.iter().filter(move |&&l| last != Some(-l)).map(move |&l| {
                let mut nw = Vec::with_capacity(w.len() + 1);
                nw.extend_from_slice(w);
                nw.push(l);
                (nw, m * ev.letter(l))
            })
        })
        .collect();
    let (words, mats) = pairs.into_iter().unzip();
    Frontier { words, mats }
}

/// Breadth-first net over reduced words, shortlex within each length.
///
/// Candidates are deduplicated greedily (a word within `target_delta / 4` of a kept
/// entry is dropped), coverage is validated after every length, and the search stops
/// once the validated radius reaches `target_delta` or `max_len` is exhausted.
pub fn build_base_net(t: &Tuple, opts: &BuildOptions) -> Result<WordNet> {
    let kind = t.kind();
    if opts.region.center.kind() != kind {
        return Err(LieError::Usage("region center lies in another group".into()));
    }
    if opts.max_len > 20 {
        return Err(LieError::Usage(format!("max_len {} exceeds 20", opts.max_len)));
    }
    let r_d = opts.target_delta / 4.0;
    if t.elements().iter().all(|g| g.is_identity(1e-12)) {
        let entries = vec![NetEntry {
            word: Word::empty(),
            element: GroupElement::identity(kind),
            coords: opts.region.center.inverse().log().ok(),
        }];
        let mut net = WordNet::assemble(t.clone(), entries, opts.region.clone(), 0, opts.target_delta, r_d);
        net.validate(opts.validation_samples, opts.seed);
        net.claimed_radius = opts.region.radius;
        net.flags.degenerate = true;
        net.flags.partial = true;
        return Ok(net);
    }

    let ev = t.evaluator();
    let letters = alphabet_letters(t.alphabet());
    let d = kind.spec().matrix_dim;
    let center_inv = opts.region.center.inverse();
    let keep = opts.region.radius + opts.keep_margin;
    let last_len = opts.max_len.max(opts.screen_len);

    let mut frontier = Frontier { words: vec![Vec::new()], mats: vec![DMatrix::identity(d, d)] };
    let mut entries: Vec<NetEntry> = Vec::new();
    let mut index = Index::with_capacity(d * d, 16);
    let mut claimed = f64::INFINITY;
    let mut collecting = true;
    let mut max_word_length = 0;

    for len in 0..=last_len {
        if len >= 1 && len <= opts.screen_len {
            let near: Vec<usize> = frontier
                .mats
                .par_iter()
                .enumerate()
                .filter(|(_, m)| (*m - DMatrix::<f64>::identity(d, d)).norm() <= 1e-6)
                .map(|(i, _)| i)
                .collect();
            for i in near {
                let g = GroupElement::from_matrix_unchecked(kind, frontier.mats[i].clone());
                let dist = dist_to_identity(&g);
                if dist <= opts.screen_tol {
                    let w = Word::from_reduced(frontier.words[i].clone());
                    return Err(LieError::ReduciblePair { word: w.to_text(), dist });
                }
            }
        }
        if collecting && len <= opts.max_len {
            let keep_flags: Vec<Option<GroupElement>> = frontier
                .mats
                .par_iter()
                .map(|m| {
                    let g = GroupElement::from_matrix_unchecked(kind, m.clone());
                    (distance(&opts.region.center, &g) <= keep).then_some(g)
                })
                .collect();
            let before = entries.len();
            for (w, g) in frontier.words.iter().zip(keep_flags) {
                let Some(g) = g else { continue };
                if is_duplicate(&index, &entries, &g, r_d) {
                    continue;
                }
                index.add(flatten(g.matrix()), entries.len()).expect("finite entries");
                let coords = center_inv.mul(&g).log().ok();
                entries.push(NetEntry { word: Word::from_reduced(w.clone()), element: g, coords });
                max_word_length = max_word_length.max(len);
            }
            if entries.len() > before {
                let mut probe = WordNet::assemble(
                    t.clone(),
                    entries.clone(),
                    opts.region.clone(),
                    max_word_length,
                    opts.target_delta,
                    r_d,
                );
                claimed = probe.validate(opts.validation_samples, opts.seed).max_dist;
            }
            if claimed <= opts.target_delta {
                collecting = false;
            }
        }
        if len == last_len || (!collecting && len >= opts.screen_len) {
            break;
        }
        let next_size = frontier.words.len() * (letters.len() - usize::from(len > 0));
        if next_size > opts.frontier_cap {
            return Err(LieError::Size(format!(
                "frontier at length {} would hold {next_size} words (cap {})",
                len + 1,
                opts.frontier_cap
            )));
        }
        frontier = expand(&frontier, &ev, &letters);
    }

    // drop entries farther than the claimed radius from the region, then re-measure
    let limit = opts.region.radius + claimed;
    let kept: Vec<NetEntry> = entries
        .into_iter()
        .filter(|e| distance(&opts.region.center, &e.element) <= limit)
        .collect();
    let max_word_length = kept.iter().map(|e| e.word.len()).max().unwrap_or(0);
    let mut net = WordNet::assemble(t.clone(), kept, opts.region.clone(), max_word_length, opts.target_delta, r_d);
    net.validate(opts.validation_samples, opts.seed);
    net.flags.partial = net.claimed_radius > opts.target_delta;
    Ok(net)
}
