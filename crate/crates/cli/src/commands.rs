//! Pipelines behind each subcommand.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde_json::json;

use lieforge::commutator::{calibrate, group_commutator_factor, Factorizer, SkMode};
use lieforge::dynamics::run_dynamics;
use lieforge::lie::dist_to_identity;
use lieforge::net::cache::{self, CacheKey};
use lieforge::net::{build_base_net, BuildOptions};
use lieforge::relation::{affine_limit_error, affine_relation_sequence, relation_rate_curve};
use lieforge::sampling;
use lieforge::sk::SkLevelState;
use lieforge::{AlgebraElement, Ball, GroupElement, GroupKind, LieError, Tuple, WordNet};

use crate::config::Settings;
use crate::output::{real, sibling, write_csv, write_json, Recorder};
use crate::CliError;

type CliResult<T> = std::result::Result<T, CliError>;

trait Phase<T> {
    fn at(self, phase: &'static str) -> CliResult<T>;
}

impl<T> Phase<T> for lieforge::Result<T> {
    fn at(self, phase: &'static str) -> CliResult<T> {
        self.map_err(|err| CliError::Lie { phase, err })
    }
}

fn usage(msg: String) -> CliError {
    CliError::Lie { phase: "config", err: LieError::Usage(msg) }
}

/// Run `command` and return the manifest path.
pub fn run(command: &str, s: &Settings) -> CliResult<PathBuf> {
    if let Some(n) = parse_threads(s)? {
        // a second call only fails if a pool already exists, which is harmless here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let ext = match command {
        "find-relation" | "calibrate" => "json",
        _ => "csv",
    };
    let out: PathBuf = s.get("out", PathBuf::from(format!("lieforge-{command}.{ext}")))?;
    let mut rec = Recorder::new();
    match command {
        "net" => net_cmd(s, &out, &mut rec)?,
        "approx" => approx_cmd(s, &out, &mut rec)?,
        "rate" => rate_cmd(s, &out, &mut rec)?,
        "factor-commutator" => factor_cmd(s, &out, &mut rec)?,
        "find-relation" => relation_cmd(s, &out, &mut rec)?,
        "dynamics" => dynamics_cmd(s, &out, &mut rec)?,
        "affine" => affine_cmd(s, &out, &mut rec)?,
        "calibrate" => calibrate_cmd(s, &out, &mut rec)?,
        other => return Err(usage(format!("unknown command {other}"))),
    }
    let manifest = rec.finish(command, s.echo())?;
    let path = sibling(&out, ".manifest.json");
    write_json(&path, &manifest)?;
    Ok(path)
}

fn parse_threads(s: &Settings) -> CliResult<Option<usize>> {
    match s.raw("threads") {
        None => Ok(None),
        Some(_) => {
            let n: usize = s.require("threads")?;
            if n == 0 {
                return Err(usage("threads must be positive".into()));
            }
            Ok(Some(n))
        }
    }
}

fn group(s: &Settings) -> CliResult<GroupKind> {
    Ok(s.get("group", GroupKind::Su2)?)
}

fn mode(s: &Settings) -> CliResult<SkMode> {
    Ok(s.get("mode", SkMode::Weak)?)
}

fn cache_dir(s: &Settings) -> CliResult<PathBuf> {
    if let Some(env) = std::env::var_os("LIEFORGE_CACHE").filter(|v| !v.is_empty()) {
        return Ok(PathBuf::from(env));
    }
    Ok(s.get("cache_dir", PathBuf::from(".lieforge-cache"))?)
}

/// Base net for the configured pair, from the cache when a matching file exists.
fn base_net(s: &Settings, rec: &mut Recorder) -> CliResult<(Tuple, WordNet)> {
    let kind = group(s)?;
    let pair = Tuple::from_seed(kind, s.get("pair_seed", 7u64)?);
    let mut opts = BuildOptions::new(Ball::at_identity(kind, s.get("radius", 1.0)?));
    opts.max_len = s.get("max_len", 8usize)?;
    opts.target_delta = s.get("target_delta", 0.01)?;
    opts.seed = s.get("seed", 0u64)?;
    let key = CacheKey::new(&pair, opts.max_len, &opts.region, opts.seed);
    let dir = cache_dir(s)?;
    rec.phase("net");
    if dir.join(key.file_name()).exists() {
        let net = cache::load(&dir, &key).at("cache")?;
        if net.target_delta == opts.target_delta {
            return Ok((pair, net));
        }
    }
    let net = build_base_net(&pair, &opts).at("net")?;
    cache::save(&net, &dir, &key).at("cache")?;
    Ok((pair, net))
}

fn sk_state(s: &Settings, rec: &mut Recorder, min_levels: usize) -> CliResult<(Tuple, SkLevelState)> {
    let levels: usize = s.get("levels", 3)?;
    if levels < min_levels {
        return Err(usage(format!("levels = {levels}; this command needs at least {min_levels}")));
    }
    let seed: u64 = s.get("seed", 0)?;
    let mode = mode(s)?;
    let cal_samples: usize = s.get("cal_samples", 2000)?;
    let targets: usize = s.get("targets", 100)?;
    let (pair, net) = base_net(s, rec)?;
    rec.phase("calibrate");
    let f = Factorizer::new(pair.kind(), mode, seed).at("commutator")?;
    let cal = calibrate(&f, cal_samples, cal_samples / 4, seed).at("commutator")?;
    rec.phase("refine");
    let mut st = SkLevelState::init_levels(net, f, &cal, targets, seed).at("sk")?;
    while st.depth() < levels {
        st.refine_level().at("sk")?;
    }
    Ok((pair, st))
}

fn net_cmd(s: &Settings, out: &Path, rec: &mut Recorder) -> CliResult<()> {
    let (pair, net) = base_net(s, rec)?;
    rec.phase("write");
    let center_inv = net.region.center.inverse();
    let rows: Vec<Vec<String>> = net
        .entries()
        .iter()
        .enumerate()
        .map(|(i, e)| {
            vec![
                i.to_string(),
                e.word.len().to_string(),
                e.word.to_text(),
                real(dist_to_identity(&center_inv.mul(&e.element))),
            ]
        })
        .collect();
    write_csv(out, &["index", "length", "word", "dist_to_center"], &rows)?;
    rec.output(out.to_path_buf());
    let summary = sibling(out, ".summary.json");
    write_json(
        &summary,
        &json!({
            "group": pair.kind(),
            "pair_hash": pair.hash_hex(),
            "entries": net.len(),
            "claimed_radius": net.claimed_radius,
            "max_word_length": net.max_word_length,
            "target_delta": net.target_delta,
            "dedup_radius": net.dedup_radius,
            "validation": net.validation,
            "flags": net.flags,
        }),
    )?;
    rec.output(summary);
    Ok(())
}

fn approx_cmd(s: &Settings, out: &Path, rec: &mut Recorder) -> CliResult<()> {
    let (_, st) = sk_state(s, rec, 1)?;
    let samples: usize = s.get("samples", 20)?;
    let seed: u64 = s.get("seed", 0)?;
    rec.phase("approximate");
    let kind = st.base.tuple.kind();
    let targets = sampling::halton_ball(kind, samples, st.base.region.radius, seed ^ 0xa11);
    let mut rows = Vec::new();
    for (i, v) in targets.iter().enumerate() {
        let t = v.exp();
        for m in 1..=st.depth() {
            let a = st.approximate(&t, m).at("sk")?;
            rows.push(vec![
                i.to_string(),
                m.to_string(),
                a.word.len().to_string(),
                real(a.dist),
                a.regime_fallback.to_string(),
            ]);
        }
    }
    write_csv(out, &["target", "level", "word_length", "dist", "regime_fallback"], &rows)?;
    rec.output(out.to_path_buf());
    Ok(())
}

fn rate_cmd(s: &Settings, out: &Path, rec: &mut Recorder) -> CliResult<()> {
    let (_, st) = sk_state(s, rec, 2)?;
    let samples: usize = s.get("samples", 100)?;
    let seed: u64 = s.get("seed", 0)?;
    rec.phase("measure");
    let report = st.rate_report(samples, seed ^ 0x4a7e).at("sk")?;
    let rows: Vec<Vec<String>> = report
        .levels
        .iter()
        .map(|r| vec![r.m.to_string(), r.l_m.to_string(), real(r.max_err), real(r.median_err)])
        .collect();
    write_csv(out, &["m", "l_m", "max_err", "median_err"], &rows)?;
    rec.output(out.to_path_buf());
    let fit = sibling(out, ".fit.json");
    write_json(
        &fit,
        &json!({ "mode": report.mode, "samples": report.samples, "seed": report.seed, "fit": report.fit }),
    )?;
    rec.output(fit);
    Ok(())
}

fn factor_cmd(s: &Settings, out: &Path, rec: &mut Recorder) -> CliResult<()> {
    let kind = group(s)?;
    let seed: u64 = s.get("seed", 0)?;
    let delta: f64 = s.get("delta", 0.01)?;
    let samples: usize = s.get("samples", 20)?;
    if !(delta > 0.0) {
        return Err(usage(format!("delta = {delta} must be positive")));
    }
    rec.phase("factor");
    let f = Factorizer::new(kind, mode(s)?, seed).at("commutator")?;
    let mut rows = Vec::new();
    for i in 0..samples {
        let mut rng = sampling::rng(seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let z = sampling::random_direction(kind, &mut rng).scale(delta).exp();
        let c = group_commutator_factor(&f, &z).at("commutator")?;
        rows.push(vec![
            i.to_string(),
            real(c.delta),
            real(c.achieved_dist),
            real(c.achieved_dist / c.delta.powf(1.5)),
            c.pairs.len().to_string(),
            real(c.solution.norm_ratio),
        ]);
    }
    write_csv(out, &["index", "delta", "achieved_dist", "ratio_to_delta_1_5", "commutators", "norm_ratio"], &rows)?;
    rec.output(out.to_path_buf());
    Ok(())
}

fn relation_cmd(s: &Settings, out: &Path, rec: &mut Recorder) -> CliResult<()> {
    let (pair, st) = sk_state(s, rec, 2)?;
    rec.phase("relations");
    let curve = relation_rate_curve(&pair, &st, st.depth()).at("relation")?;
    let certs: Vec<serde_json::Value> = curve.certificates.iter().map(|c| c.to_json()).collect();
    let failures: Vec<serde_json::Value> =
        curve.failures.iter().map(|(k, e)| json!({ "level": k, "error": e })).collect();
    write_json(
        out,
        &json!({
            "group": pair.kind(),
            "pair_hash": pair.hash_hex(),
            "certificates": certs,
            "failures": failures,
            "fit": curve.fit,
        }),
    )?;
    rec.output(out.to_path_buf());
    Ok(())
}

/// `diag:L`, `rot:THETA` (SO(3), about the third axis) or `exp:C1,C2,...`.
pub fn parse_element(kind: GroupKind, text: &str) -> lieforge::Result<GroupElement> {
    let (tag, rest) = text
        .split_once(':')
        .ok_or_else(|| LieError::Usage(format!("element spec `{text}` has no `tag:` prefix")))?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| LieError::Usage(format!("`{v}`: {e}")));
    match (tag, kind) {
        ("diag", GroupKind::Sl2r) => {
            let l = num(rest)?;
            GroupElement::new(kind, DMatrix::from_row_slice(2, 2, &[l, 0.0, 0.0, 1.0 / l]))
        }
        ("diag", GroupKind::Sl3r) => {
            let l = num(rest)?;
            GroupElement::new(kind, DMatrix::from_row_slice(3, 3, &[l, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0 / l]))
        }
        ("rot", GroupKind::So3) => {
            let (c, s) = (num(rest)?.cos(), num(rest)?.sin());
            GroupElement::new(kind, DMatrix::from_row_slice(3, 3, &[c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0]))
        }
        ("exp", _) => {
            let coords = rest.split(',').map(num).collect::<lieforge::Result<Vec<f64>>>()?;
            if coords.len() != kind.spec().algebra_dim {
                return Err(LieError::Usage(format!(
                    "{kind} needs {} coordinates, got {}",
                    kind.spec().algebra_dim,
                    coords.len()
                )));
            }
            Ok(AlgebraElement::from_slice(kind, &coords).exp())
        }
        _ => Err(LieError::Usage(format!("element spec `{text}` is not available for {kind}"))),
    }
}

fn dynamics_cmd(s: &Settings, out: &Path, rec: &mut Recorder) -> CliResult<()> {
    let kind: GroupKind = s.get("group", GroupKind::Sl2r)?;
    let g_text: String = s.get("g", if kind == GroupKind::Sl2r { "diag:1.2".to_string() } else { String::new() })?;
    if g_text.is_empty() {
        return Err(usage(format!("dynamics on {kind} needs g")));
    }
    let g = parse_element(kind, &g_text).at("config")?;
    let h_radius: f64 = s.get("h_radius", 0.05)?;
    let mut rng = sampling::rng(s.get("h_seed", 3u64)?);
    let h = sampling::random_element_in_ball(&GroupElement::identity(kind), h_radius, &mut rng);
    rec.phase("iterate");
    let rep = run_dynamics(&g, &h, s.get("kmax", 40usize)?).at("dynamics")?;
    let rows: Vec<Vec<String>> = rep
        .iterates
        .iter()
        .map(|it| vec![it.k.to_string(), real(it.norm), real(it.ratio), real(it.angle)])
        .collect();
    write_csv(out, &["k", "norm", "ratio", "angle"], &rows)?;
    rec.output(out.to_path_buf());
    Ok(())
}

fn affine_cmd(s: &Settings, out: &Path, rec: &mut Recorder) -> CliResult<()> {
    let s0: f64 = s.get("s0", 0.3)?;
    let kmax: usize = s.get("kmax", 40)?;
    rec.phase("sequence");
    let steps = affine_relation_sequence(s0, kmax).at("relation")?;
    let rows: Vec<Vec<String>> = steps
        .iter()
        .map(|st| {
            vec![
                st.k.to_string(),
                st.m_k.to_string(),
                real(st.s_k),
                real(st.gap),
                real(st.relation_residual),
                st.floor_tie.to_string(),
            ]
        })
        .collect();
    write_csv(out, &["k", "m_k", "s_k", "gap", "relation_residual", "floor_tie"], &rows)?;
    rec.output(out.to_path_buf());
    let grid: Vec<f64> = (0..=200).map(|i| -1.0 + i as f64 / 100.0).collect();
    let limit = affine_limit_error(s0, &[10, 20, 40], &grid);
    let lpath = sibling(out, ".limit.csv");
    write_csv(&lpath, &["k", "sup_err"], &limit.iter().map(|(k, e)| vec![k.to_string(), real(*e)]).collect::<Vec<_>>())?;
    rec.output(lpath);
    Ok(())
}

fn calibrate_cmd(s: &Settings, out: &Path, rec: &mut Recorder) -> CliResult<()> {
    let kind = group(s)?;
    let seed: u64 = s.get("seed", 0)?;
    rec.phase("calibrate");
    let f = Factorizer::new(kind, mode(s)?, seed).at("commutator")?;
    let cal = calibrate(&f, s.get("samples", 10_000)?, s.get("group_samples", 2_000)?, seed).at("commutator")?;
    write_json(out, &cal)?;
    rec.output(out.to_path_buf());
    Ok(())
}
