use std::path::Path;
use std::process::{Command, Output};

use num_complex::Complex64 as C64;
use tfnorm_core::grid::shifted_gaussian;
use tfnorm_core::io::{load_phase_field, load_signal, save_phase_field, save_signal};
use tfnorm_core::psido::SymbolRecipe;
use tfnorm_core::{Grid, PhaseField};

fn tfnorm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tfnorm")).args(args).output().expect("tfnorm runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn missing_input_exits_with_parse_code() {
    let out = tfnorm(&["norm", "--in", "missing.csv", "--space", "M:w=const,B=Lpq:p=2,q=2"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(tfnorm(&["norm"]).status.code(), Some(2));
    assert_eq!(tfnorm(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn equiv_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for r in [&a, &b] {
        let out = tfnorm(&["equiv", "--seed", "7", "--count", "4", "--rs", "r0,inf", "--report", p(r)]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert!(text.starts_with("key,min,max\n0/1/M:S,"));
    assert_eq!(tfnorm(&["equiv"]).status.code(), Some(2));
}

#[test]
fn stft_norm_and_operators() {
    let dir = tempfile::tempdir().unwrap();
    let g = Grid::centered(1, 64, 0.25).unwrap();
    let f = shifted_gaussian(&g, &[0.5], &[1.0]);
    let fpath = dir.path().join("f.csv");
    save_signal(&f, &fpath).unwrap();

    let vpath = dir.path().join("v.csv");
    assert_eq!(tfnorm(&["stft", "--in", p(&fpath), "--out", p(&vpath)]).status.code(), Some(0));
    let v = load_phase_field(&vpath).unwrap();
    assert!((v.norm() - 1.0).abs() < 1e-8, "Moyal: ||V f|| = ||f|| = 1");

    let out = tfnorm(&["norm", "--in", p(&fpath), "--space", "M:w=const,B=Lpq:p=2,q=2"]);
    let n: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    assert!((n - 1.0).abs() < 1e-8);

    // Op(1) is the identity in every quantization
    let apath = dir.path().join("one.csv");
    save_phase_field(&SymbolRecipe::One.realize(&g), &apath).unwrap();
    for q in ["kn", "weyl", "I", "0.5"] {
        let gpath = dir.path().join(format!("g-{q}.csv"));
        let out = tfnorm(&["psido", "--symbol", p(&apath), "--A", q, "--apply", p(&fpath), "--out", p(&gpath)]);
        assert_eq!(out.status.code(), Some(0));
        assert!(load_signal(&gpath).unwrap().rel_distance(&f) < 1e-12);
    }
    assert_eq!(tfnorm(&["psido", "--symbol", p(&apath), "--A", "0.3", "--apply", p(&fpath)]).status.code(), Some(3));

    // a symbol on another grid violates the shared-grid invariant
    let other = dir.path().join("other.csv");
    save_phase_field(&SymbolRecipe::One.realize(&Grid::centered(1, 32, 0.25).unwrap()), &other).unwrap();
    assert_eq!(tfnorm(&["psido", "--symbol", p(&other), "--apply", p(&fpath)]).status.code(), Some(3));

    let gauss = dir.path().join("gauss.csv");
    let a = PhaseField::from_fn(&g, |x, xi| C64::new((-(x[0] * x[0] + xi[0] * xi[0]) / 2.0).exp(), 0.0));
    save_phase_field(&a, &gauss).unwrap();
    let out = tfnorm(&["toeplitz", "--symbol", p(&gauss), "--route", "both"]);
    assert_eq!(out.status.code(), Some(0));
    let line = String::from_utf8(out.stdout).unwrap();
    let d: f64 = line.trim().strip_prefix("route_distance,").unwrap().parse().unwrap();
    assert!(d < 1e-5, "{d}");
}

#[test]
fn certify_and_conv_cert_configs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    std::fs::write(&cfg, "theorem = lifting\nseed = 3\nn = 32\nh = 0.5\ncount = 4\n").unwrap();
    let rep = dir.path().join("r.csv");
    let out = tfnorm(&["certify", "--theorem", "lifting", "--config", p(&cfg), "--report", p(&rep)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&rep).unwrap();
    assert!(text.lines().skip(1).all(|l| l.ends_with(",true")), "{text}");
    // theorem mismatch, missing seed
    assert_eq!(tfnorm(&["certify", "--theorem", "pseudocont2", "--config", p(&cfg)]).status.code(), Some(2));
    std::fs::write(&cfg, "n = 32\n").unwrap();
    assert_eq!(tfnorm(&["certify", "--theorem", "lifting", "--config", p(&cfg)]).status.code(), Some(2));

    // the convolution identity needs a wide box, the product one a fine step
    std::fs::write(&cfg, "seed = 5\nn = 64\nh = 0.5\ncount = 3\nbackend = Lpq:p=1,q=1\n").unwrap();
    for lemma in ["assist-conv", "mod-conv", "mod-mult"] {
        let out = tfnorm(&["conv-cert", "--lemma", lemma, "--config", p(&cfg)]);
        assert_eq!(out.status.code(), Some(0), "{lemma}: {}", String::from_utf8_lossy(&out.stdout));
    }
    // invalid exponent relation for the classical estimate
    std::fs::write(&cfg, "seed = 5\nn = 64\nh = 0.25\ncount = 2\np0 = 1\nq0 = 1\np1 = 1\nq1 = 1\np2 = 1\nq2 = 1\n").unwrap();
    assert_eq!(tfnorm(&["conv-cert", "--lemma", "classical", "--config", p(&cfg)]).status.code(), Some(3));
}

#[test]
fn verify_quick_subset_passes() {
    let certs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../certs");
    let out = tfnorm(&["verify", "--quick", "--only", "1,3,5,9", "--certs", p(&certs)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(tfnorm(&["verify", "--only", "14"]).status.code(), Some(2));
}
