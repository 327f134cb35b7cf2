use lieforge::net::cache::{self, CacheKey};
use lieforge::net::{build_base_net, BuildOptions};
use lieforge::{Ball, CacheError, GroupElement, GroupKind, LieError, Tuple, WordNet};

fn small_net(kind: GroupKind) -> (WordNet, CacheKey) {
    let pair = Tuple::from_seed(kind, 7);
    let region = Ball::at_identity(kind, 1.0);
    let mut opts = BuildOptions::new(region.clone());
    opts.max_len = 5;
    opts.validation_samples = 500;
    let net = build_base_net(&pair, &opts).unwrap();
    let key = CacheKey::new(&pair, opts.max_len, &region, opts.seed);
    (net, key)
}

#[test]
fn round_trip_preserves_entries_and_lookups() {
    let dir = tempfile::tempdir().unwrap();
    let (net, key) = small_net(GroupKind::So3);
    let back = cache::roundtrip(&net, dir.path(), &key).unwrap();
    assert_eq!(back.len(), net.len());
    assert_eq!(back.claimed_radius, net.claimed_radius);
    for (a, b) in net.entries().iter().zip(back.entries()) {
        assert_eq!(a.word, b.word);
        assert_eq!(a.element.entries(), b.element.entries());
    }
    let probes = net.region_samples(50, 3);
    for p in &probes {
        assert_eq!(net.nearest(p).unwrap().index, back.nearest(p).unwrap().index);
    }
}

#[test]
fn wrong_key_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let (net, key) = small_net(GroupKind::Su2);
    let path = cache::save(&net, dir.path(), &key).unwrap();
    let mut other = key.clone();
    other.max_len += 1;
    let err = cache::load_file(&path, &other).unwrap_err();
    assert!(matches!(err, LieError::Cache(CacheError::KeyMismatch { .. })), "{err}");
}

#[test]
fn tampered_entries_fail_the_digest() {
    let dir = tempfile::tempdir().unwrap();
    let (net, key) = small_net(GroupKind::Su2);
    let path = cache::save(&net, dir.path(), &key).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let entries = v["entries"].as_array_mut().unwrap();
    entries.pop();
    std::fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
    let err = cache::load_file(&path, &key).unwrap_err();
    assert!(matches!(err, LieError::Cache(CacheError::Integrity { .. })), "{err}");
}

#[test]
fn future_version_asks_for_migration() {
    let dir = tempfile::tempdir().unwrap();
    let (net, key) = small_net(GroupKind::Su2);
    let path = cache::save(&net, dir.path(), &key).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    v["header"]["version"] = serde_json::json!(cache::CACHE_VERSION + 1);
    std::fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
    let err = cache::load_file(&path, &key).unwrap_err();
    assert!(matches!(err, LieError::Cache(CacheError::Version { .. })), "{err}");
}

#[test]
fn identity_pair_gives_a_degenerate_net() {
    let kind = GroupKind::Sl2r;
    let id = GroupElement::identity(kind);
    let pair = Tuple::pair(id.clone(), id).unwrap();
    let net = build_base_net(&pair, &BuildOptions::new(Ball::at_identity(kind, 1.0))).unwrap();
    assert!(net.flags.degenerate);
    assert_eq!(net.len(), 1);
    assert!(net.entry(0).word.is_empty());
}

#[test]
fn missing_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let (_, key) = small_net(GroupKind::Su2);
    assert!(matches!(cache::load(dir.path(), &key), Err(LieError::Io(_))));
}
