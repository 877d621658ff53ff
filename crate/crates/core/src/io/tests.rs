use std::path::Path;

use super::*;
use crate::filter::{run_filter, FilterConfig, InitialStatePrior, Record, StateSpaceModel};
use crate::model::{BkParams, DriverKind, SihrParams};
use crate::observation::ObservationModel;
use crate::pmcmc::{Chain, Param, ParamVector};

const TABLE1: &str = include_str!("../../configs/table1.toml");
const ARIZONA: &str = include_str!("../../configs/arizona.toml");

fn configs_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/configs"))
}

fn table1() -> RunConfig {
    RunConfig::from_toml_str(TABLE1, &configs_dir().join("table1.toml")).unwrap()
}

fn fixture_chain() -> Chain {
    let base = ParamVector { eta: 0.1, lambda: 1.0 / 35.0, mu: -1.3, sigma: 0.4, phi: Some(0.01) };
    let second = ParamVector { eta: 0.125, ..base };
    Chain {
        free: vec![Param::Eta],
        initial: base,
        initial_log_post: -10.5,
        draws: vec![base, second, second],
        log_posts: vec![-10.5, -9.25, -9.25],
        log_likelihoods: vec![-12.0, -10.75, -10.75],
        accepted: vec![false, true, false],
        proposal_cov_history: Vec::new(),
    }
}

fn small_filter() -> crate::filter::FilterResult<f64> {
    let model = StateSpaceModel {
        sihr: SihrParams { n: 1e4, alpha: 1.0 / 7.0, gamma: 0.05, eta: 0.1 },
        driver: DriverKind::BlackKarasinski(BkParams { lambda: 1.0 / 35.0, mu: -1.3, sigma: 0.4 }),
        observation: ObservationModel::NegativeBinomial { r: 100.0 },
        initial: InitialStatePrior::point(100.0, 0.4),
    };
    let config = FilterConfig { particles: 20, record: Record::Bands, parallel: false, ..FilterConfig::default() };
    run_filter(&[0, 1, 2, 3], &model, &config, 5).unwrap()
}

#[test]
fn bundled_configs_parse() {
    let t = table1();
    assert_eq!(t.sampler.iterations, 100_000);
    assert_eq!(t.priors.unwrap(), crate::presets::priors());
    let a = RunConfig::from_toml_str(ARIZONA, &configs_dir().join("arizona.toml")).unwrap();
    assert!(a.data.unwrap().path.unwrap().is_file());
    let truth = RunConfig::load(&configs_dir().join("arizona_truth.toml")).unwrap();
    assert_eq!(truth.data.unwrap().synthetic.unwrap().seed, Some(4));
}

#[test]
fn config_echo_round_trips() {
    let t = table1();
    let json = serde_json::to_string(&t).unwrap();
    assert_eq!(serde_json::from_str::<RunConfig>(&json).unwrap(), t);
    let text = t.to_toml_string();
    assert_eq!(RunConfig::from_toml_str(&text, Path::new("echo.toml")).unwrap(), t);
}

fn field_of(text: &str) -> String {
    match RunConfig::from_toml_str(text, &configs_dir().join("x.toml")) {
        Err(ConfigError::Invalid { field, .. }) => field,
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn validation_names_the_field() {
    assert_eq!(field_of(&TABLE1.replace("burn_in = 1000", "burn_in = 200000")), "sampler.iterations");
    assert_eq!(field_of(&TABLE1.replace("particles = 1000", "particles = 1")), "sampler.particles");
    assert_eq!(field_of(&TABLE1.replace("eta = 0.1", "eta = -0.1")), "model.eta");
    assert_eq!(field_of(&TABLE1.replace("sigma = 0.4", "sigma = -0.4")), "model.driver.sigma");
    assert_eq!(field_of(&TABLE1.replace("r = 100.0", "r = 0.0")), "model.observation.r");
    assert_eq!(
        field_of(&TABLE1.replace("a = 1.5, b = 10.0", "a = -1.5, b = 10.0")),
        "priors.sigma"
    );
    assert_eq!(
        field_of(&TABLE1.replace("kind = \"negative_binomial\"\nr = 100.0", "kind = \"poisson\"")),
        "priors.phi"
    );
    assert_eq!(
        field_of(&ARIZONA.replace("arizona_flu_sample.csv", "no_such_file.csv")),
        "data.path"
    );
    match RunConfig::from_toml_str(&TABLE1.replace("[sampler]", "[sampler]\nbogus = 1"), Path::new("x.toml")) {
        Err(ConfigError::Parse { message, .. }) => assert!(message.contains("bogus")),
        other => panic!("{other:?}"),
    }
    assert!(matches!(RunConfig::load(Path::new("/nonexistent/run.toml")), Err(ConfigError::Io { .. })));
}

#[test]
fn chain_csv_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("chain.csv");
    write_chain_csv(&p, &fixture_chain()).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    let expected = "\
iteration,eta,lambda,mu,sigma,phi,log_post,log_likelihood,accepted
1,1.0000000000000001e-1,2.8571428571428571e-2,-1.3000000000000000e0,4.0000000000000002e-1,1.0000000000000000e-2,-1.0500000000000000e1,-1.2000000000000000e1,0
2,1.2500000000000000e-1,2.8571428571428571e-2,-1.3000000000000000e0,4.0000000000000002e-1,1.0000000000000000e-2,-9.2500000000000000e0,-1.0750000000000000e1,1
3,1.2500000000000000e-1,2.8571428571428571e-2,-1.3000000000000000e0,4.0000000000000002e-1,1.0000000000000000e-2,-9.2500000000000000e0,-1.0750000000000000e1,0
";
    assert_eq!(text, expected);
    let back = read_chain_csv(&p).unwrap();
    assert_eq!(back.draws, fixture_chain().draws);
    assert_eq!(back.log_posts, fixture_chain().log_posts);
    assert_eq!(back.accepted, fixture_chain().accepted);
}

#[test]
fn floats_round_trip_through_text() {
    for x in [0.1, 1.0 / 3.0, std::f64::consts::PI * 1e-300, -2.5e300, 5e-324, f64::MAX] {
        assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
    }
}

#[test]
fn outputs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = table1();
    config.sampler.burn_in = 1;
    let chain = fixture_chain();
    let filter = small_filter();
    let m1 = write_outputs(&chain, &filter, dir.path(), &config, 3).unwrap();
    for f in ["chain.csv", "bands.csv", "summary.json", "manifest.json"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let bands = std::fs::read_to_string(dir.path().join("bands.csv")).unwrap();
    assert_eq!(bands.lines().count(), 1 + 4 * 5);
    assert!(bands.starts_with("t,coordinate,q05,q50,q95\n0,S,"));

    let text = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    let parsed: Manifest = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed, m1);
    assert_eq!(parsed.config, config);

    // identical inputs, identical hashes
    let m2 = write_outputs(&chain, &filter, dir.path(), &config, 3).unwrap();
    assert_eq!(m1.files, m2.files);
    // one changed file changes exactly its hash
    let mut changed = chain.clone();
    changed.log_posts[2] = -9.0;
    let m3 = write_outputs(&changed, &filter, dir.path(), &config, 3).unwrap();
    assert_ne!(m1.files["chain.csv"], m3.files["chain.csv"]);
    assert_eq!(m1.files["bands.csv"], m3.files["bands.csv"]);
    assert_eq!(m1.files["summary.json"], m3.files["summary.json"]);
}

#[test]
fn empty_chain_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut chain = fixture_chain();
    chain.draws.clear();
    chain.log_posts.clear();
    chain.log_likelihoods.clear();
    chain.accepted.clear();
    let err = write_outputs(&chain, &small_filter(), dir.path(), &table1(), 0).unwrap_err();
    assert!(matches!(err, OutputError::EmptyChain));
}

#[test]
fn bundled_sample_row_count() {
    let path = Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/data/arizona_flu_sample.csv"));
    let s = load_series(path, &SeriesQuery::default()).unwrap();
    assert_eq!(s.len(), 136);
    assert_eq!(s.region, "AZ");
    assert_eq!(s.dates[0].to_string(), "2022-10-01");
    assert_eq!(s.dates[135].to_string(), "2023-02-13");
}
