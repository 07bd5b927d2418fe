use mfsde_cli::config::{Axis, Metric, SigmaId};
use mfsde_cli::ExperimentConfig;
use mfsde_core::ParamValue;

const MINIMAL: &str = r#"
particles = 100
x0 = 0.5
seed = 9

[model]
id = "zero_drift"

[grid]
T = 1.0
steps = 8
"#;

fn with(extra_top: &str, extra_tail: &str) -> String {
    format!("{extra_top}\n{MINIMAL}\n{extra_tail}")
}

#[test]
fn minimal_config_gets_defaults() {
    let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
    assert_eq!(cfg.particles, 100);
    assert_eq!(cfg.seed, 9);
    assert_eq!(cfg.grid.horizon, 1.0);
    assert_eq!(cfg.weight_schedule, "uniform");
    assert!(cfg.estimators.is_empty());
    assert_eq!(cfg.output, std::path::PathBuf::from("."));
    assert!(cfg.payoff.is_none() && cfg.mollify.is_none() && cfg.picard.is_none());
}

#[test]
fn full_config_round_trips_every_section() {
    let text = r#"
particles = 2000
x0 = 1.0
seed = 42
weight_schedule = "linear"
estimators = ["bel", "pathwise", "central_fd"]
output = "results"
fd_bump = 0.02

[model]
id = "custom_table"
params = { knots = [-1.0, 0.0, 1.0], values = [0.0, 1.0, 0.0], coupling = 0.25 }

[grid]
T = 2.0
steps = 64

[payoff]
id = "smoothed_call"
params = { strike = 0.5, width = 0.1 }
epsilon = 0.25

[mollify]
bandwidth = 0.1
quadrature_order = 6

[picard]
max_iter = 4

[hoelder]
points = [0.0, 1.0]

[converge]
axis = "particles"
values = [100, 1000]
metric = "w1_to_oracle"

[lamperti]
sigma = "unit"
"#;
    let cfg = ExperimentConfig::from_toml(text).unwrap();
    assert_eq!(cfg.estimators, ["bel", "pathwise", "central_fd"]);
    assert_eq!(cfg.model.params["knots"], ParamValue::List(vec![-1.0, 0.0, 1.0]));
    assert_eq!(cfg.model.params["coupling"], ParamValue::Number(0.25));
    assert_eq!(cfg.payoff.as_ref().unwrap().epsilon, Some(0.25));
    assert_eq!(cfg.mollify.unwrap().quadrature_order, 6);
    assert_eq!(cfg.picard.unwrap().max_iter, 4);
    assert_eq!(cfg.picard.unwrap().tol, 1e-3);
    let conv = cfg.converge.as_ref().unwrap();
    assert_eq!((conv.axis, conv.metric), (Axis::Particles, Metric::W1ToOracle));
    let lamperti = cfg.lamperti.unwrap();
    assert_eq!(
        (lamperti.sigma, lamperti.anchor, lamperti.probes),
        (SigmaId::Unit, 0.0, 1000)
    );

    let again = ExperimentConfig::from_toml(&toml::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(again, cfg);
    assert_eq!(again.digest(), cfg.digest());
}

#[test]
fn unknown_keys_are_rejected_everywhere() {
    for text in [
        with("colour = 3", ""),
        MINIMAL.replace("id = \"zero_drift\"", "id = \"zero_drift\"\nflavour = 1"),
        MINIMAL.replace("steps = 8", "steps = 8\ndt = 0.1"),
        with("", "[picard]\nmax_iter = 3\nrelax = 0.5"),
        with("", "[extras]\nx = 1"),
    ] {
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        assert!(err.0.contains("unknown"), "{err}");
    }
}

#[test]
fn out_of_range_values_are_rejected() {
    let cases = [
        MINIMAL.replace("particles = 100", "particles = 1"),
        MINIMAL.replace("T = 1.0", "T = -1.0"),
        MINIMAL.replace("T = 1.0", "T = nan"),
        MINIMAL.replace("steps = 8", "steps = 0"),
        MINIMAL.replace("x0 = 0.5", "x0 = inf"),
        MINIMAL.replace("zero_drift", "brownian_bridge"),
        with("weight_schedule = \"cubic\"", ""),
        with("estimators = [\"bel\", \"magic\"]", ""),
        with("fd_bump = 0.0", ""),
        with("", "[payoff]\nid = \"digital\""),
        with("", "[payoff]\nid = \"identity\"\nepsilon = 0.0"),
        with("", "[mollify]\nbandwidth = 0.0\nquadrature_order = 4"),
        with("", "[mollify]\nbandwidth = 0.1\nquadrature_order = 1"),
        with("", "[picard]\nmax_iter = 0"),
        with("", "[picard]\ntol = -1.0"),
        with("", "[picard]\ntol = 0.0"),
        with("", "[hoelder]\npoints = [1.0]"),
        with("", "[converge]\naxis = \"steps\"\nvalues = []"),
        with("", "[converge]\naxis = \"particles\"\nvalues = [1]"),
        with("", "[converge]\naxis = \"time\"\nvalues = [4]"),
        with("", "[lamperti]\nprobes = 0"),
        with("", "[lamperti]\nsigma = \"cubic\""),
    ];
    for text in &cases {
        assert!(ExperimentConfig::from_toml(text).is_err(), "accepted:\n{text}");
    }
}

#[test]
fn missing_required_fields_are_reported() {
    for field in ["particles = 100", "x0 = 0.5", "seed = 9", "steps = 8"] {
        let text = MINIMAL.replace(field, "");
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        assert!(err.0.contains("missing"), "{err}");
    }
}

#[test]
fn type_errors_are_reported() {
    assert!(ExperimentConfig::from_toml(&MINIMAL.replace("particles = 100", "particles = \"many\"")).is_err());
    assert!(ExperimentConfig::from_toml(&MINIMAL.replace("particles = 100", "particles = -5")).is_err());
    assert!(ExperimentConfig::from_toml("not toml at all [").is_err());
}

#[test]
fn digest_tracks_content_not_formatting() {
    let a = ExperimentConfig::from_toml(MINIMAL).unwrap();
    let spaced = MINIMAL.replace("seed = 9", "seed    =   9   # comment");
    let b = ExperimentConfig::from_toml(&spaced).unwrap();
    assert_eq!(a.digest(), b.digest());
    let c = ExperimentConfig::from_toml(&MINIMAL.replace("seed = 9", "seed = 10")).unwrap();
    assert_ne!(a.digest(), c.digest());
    assert_eq!(a.digest().len(), 16);
}

#[test]
fn shipped_example_configs_parse() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 7);
}
