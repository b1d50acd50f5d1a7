use std::fs;
use std::path::Path;

use tar4c::connectivity::{GraphFormat, GraphOptions};
use tar4c::inference::{bootstrap_linearity, combine_pvalues, BootstrapOptions};
use tar4c::pipeline::{self, AuditLog, CompareOptions, RunConfig, SimulationSpec};
use tar4c::series::{load_csv, CsvSchema};
use tar4c::simgen::{gen_causal_pair, gen_confounded_network, CausalPairSpec, NetworkSpec, RegimeSpec, TarProcessSpec};
use tar4c::tar::{TarConfig, TarData};

fn pair() -> CausalPairSpec {
    CausalPairSpec::two_regime(RegimeSpec::new(0.0, &[0.5], &[0.9]), RegimeSpec::new(0.0, &[-0.3], &[0.0]), 0.0, 2)
}

fn network(loading: f64) -> NetworkSpec {
    NetworkSpec {
        pair: pair(),
        n_confounders: 3,
        factors: vec![TarProcessSpec::linear(RegimeSpec::ar(&[0.5]))],
        loadings: vec![vec![loading]; 5],
        noise_scale: 0.5,
        labels: None,
    }
}

fn sim_spec(subjects: usize) -> SimulationSpec {
    SimulationSpec {
        network: network(0.3),
        subjects,
        epochs: 3,
        epoch_len: 400,
        seed: 5,
        task: "ME".into(),
        gesture: "BF".into(),
        tar: TarConfig::new(1, 1, [1, 2, 3]),
    }
}

fn fast(cfg: &mut RunConfig) {
    cfg.boot = 99;
    cfg.perms = 199;
}

fn run_dir(dir: &Path, subjects: usize) -> (RunConfig, pipeline::RunOutput) {
    let manifest = pipeline::simulate(&sim_spec(subjects), dir).unwrap();
    let mut cfg = RunConfig::load(&manifest).unwrap();
    fast(&mut cfg);
    let out = pipeline::run(&cfg).unwrap();
    (cfg, out)
}

#[test]
fn causal_generator_concentrates_at_true_delay() {
    let tmp = tempfile::tempdir().unwrap();
    let (cfg, out) = run_dir(tmp.path(), 5);
    let fwd = &out.edges[0];
    assert_eq!((fwd.source.as_str(), fwd.target.as_str()), ("X", "Y"));
    let n = &fwd.tally.n_by_delay;
    assert_eq!(n[1], 5, "{n:?}");
    assert!(fwd.tgci > 0.0);

    // every edge value is recomputable from the audit alone
    pipeline::write_outputs(&out, &cfg.out_dir(), &[GraphFormat::Json, GraphFormat::Dot], &GraphOptions::default()).unwrap();
    let report = pipeline::verify_bundle(&cfg.out_dir()).unwrap();
    assert!(report.ok(), "{:?}", report.mismatches);
    assert_eq!(pipeline::replay(&out.audit).unwrap(), out.edges);
}

#[test]
fn replay_detects_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    let (cfg, out) = run_dir(tmp.path(), 2);
    let dir = cfg.out_dir();
    pipeline::write_outputs(&out, &dir, &[GraphFormat::Json], &GraphOptions::default()).unwrap();
    let mut audit = AuditLog::load(dir.join(pipeline::AUDIT_FILE)).unwrap();
    for d in &mut audit.items[0].delays {
        for t in &mut d.epochs {
            t.linearity.p = 1.0;
        }
    }
    fs::write(dir.join(pipeline::AUDIT_FILE), serde_json::to_string(&audit).unwrap()).unwrap();
    assert!(!pipeline::verify_bundle(&dir).unwrap().ok());
}

#[test]
fn empty_pair_list_gives_empty_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = pipeline::simulate(&sim_spec(1), tmp.path()).unwrap();
    let mut cfg = RunConfig::load(&manifest).unwrap();
    cfg.pairs.clear();
    let out = pipeline::run(&cfg).unwrap();
    assert!(out.edges.is_empty());
    assert!(out.audit.items.is_empty());
}

#[test]
fn unknown_pair_channel_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = pipeline::simulate(&sim_spec(1), tmp.path()).unwrap();
    let mut cfg = RunConfig::load(&manifest).unwrap();
    cfg.pairs = vec![("X".into(), "Q".into())];
    let err = pipeline::run(&cfg).unwrap_err();
    assert_eq!(err.kind(), tar4c::ErrorKind::Config);
}

#[test]
fn comparing_a_bundle_with_itself_flags_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, out) = run_dir(tmp.path(), 3);
    let opts = CompareOptions {
        n_perm: 199,
        ..CompareOptions::default()
    };
    let rep = pipeline::compare(("a", &out.audit), Some(("b", &out.audit)), &opts).unwrap();
    assert_eq!(rep.comparisons.len(), 2);
    for c in &rep.comparisons {
        assert_eq!(c.p, 1.0);
        assert!(c.arrow.is_none());
    }
}

#[test]
fn simulation_files_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let mut spec = sim_spec(1);
    spec.network = network(0.0);
    let manifest = pipeline::simulate(&spec, tmp.path()).unwrap();
    let m = load_csv(tmp.path().join("S001.csv"), &CsvSchema::default()).unwrap();
    let net = gen_confounded_network(&spec.network, 1200, tar4c::rng::derive_seed(spec.seed, &[0])).unwrap();
    assert_eq!(m, net.matrix);
    // zero loadings: the pair channels are the clean generator output
    assert_eq!(m.channel(0), &net.clean_x[..]);
    assert_eq!(m.channel(1), &net.clean_y[..]);

    let again = tempfile::tempdir().unwrap();
    pipeline::simulate(&spec, again.path()).unwrap();
    for f in ["S001.csv", "S001_epochs.csv", "config.json"] {
        assert_eq!(fs::read(tmp.path().join(f)).unwrap(), fs::read(again.path().join(f)).unwrap());
    }
    assert!(manifest.ends_with("config.json"));
}

#[test]
fn bootstrap_is_replay_exact() {
    let (x, y) = gen_causal_pair(&pair(), 300, 500, 1).unwrap();
    let cfg = TarConfig::new(1, 1, [1, 2]);
    let data = TarData::for_config(y, x, &cfg).unwrap();
    let a = bootstrap_linearity(&data, &cfg, &BootstrapOptions::new(99, 3)).unwrap();
    let b = bootstrap_linearity(&data, &cfg, &BootstrapOptions::new(99, 3)).unwrap();
    assert_eq!(a.p_boot.to_bits(), b.p_boot.to_bits());
    assert_eq!(a.boot_draws, b.boot_draws);
    let count = a.boot_draws.iter().filter(|&&v| v >= a.lr - 1e-10 * a.lr.abs().max(1.0)).count();
    assert_eq!(a.p_boot, (1 + count) as f64 / 100.0);
}

#[test]
fn fisher_combination_is_uniform_under_null() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    let mut ps: Vec<f64> = (0..2000)
        .map(|_| {
            let batch: Vec<f64> = (0..23).map(|_| 1.0 - rng.random::<f64>()).collect();
            combine_pvalues(&batch).unwrap().p
        })
        .collect();
    ps.sort_by(f64::total_cmp);
    let n = ps.len() as f64;
    let ks = ps
        .iter()
        .enumerate()
        .map(|(i, &p)| ((i + 1) as f64 / n - p).max(p - i as f64 / n))
        .fold(0.0, f64::max);
    // asymptotic 1% critical value of the one-sample KS statistic
    assert!(ks < 1.628 / n.sqrt(), "KS = {ks}");
}
