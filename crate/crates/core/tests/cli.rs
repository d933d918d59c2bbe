//! End-to-end runs of the command-line binary.

use besovlab::io::{parse_kv, Snapshot};
use besovlab::wavelet::{dwt_forward, WaveletSystem};
use besovlab::BoundingBox;
use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_besovlab"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn pencil_cap_row_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["pencil", "--cap", "90deg", "--count", "5", "--out", "p"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("p/pencil_cap.csv")).unwrap();
    let first = csv.lines().nth(1).unwrap();
    let lambda_plus: f64 = first.split(',').nth(3).unwrap().parse().unwrap();
    assert!((lambda_plus - 1.0).abs() < 1e-8);
    let manifest = parse_kv(&std::fs::read_to_string(dir.path().join("p/manifest.txt")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "pencil");
    assert_eq!(manifest["param.cap"], "90deg");
    assert!(manifest.contains_key("timestamp") && manifest.contains_key("version"));
}

#[test]
fn weight_range_row() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["pencil", "--wedge", "45deg", "--m", "1", "--gamma-m", "1", "--out", "w"]);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("w/weight_range.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[3].parse::<f64>().unwrap(), -1.0);
    assert_eq!(row[6].parse::<f64>().unwrap(), 1.0);
    assert_eq!(row[9], "true");
    let o = run(dir.path(), &["pencil", "--wedge", "270deg", "--m", "1", "--gamma", "4", "--out", "w2"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("admissible a: empty"));
}

#[test]
fn verify_pencil_lists_anchors() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["verify", "pencil", "--out", "v"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("lambda1+(90deg)=1.000000000000"), "{s}");
    assert!(s.contains("lambda1+(5deg)=27."), "{s}");
    assert!(dir.path().join("v/verify.csv").exists());
}

#[test]
fn verify_norms_fault_hook_fails_homogeneity() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["verify", "norms", "--fault-hook", "misscaled-weight", "--out", "v"]);
    assert_eq!(o.status.code(), Some(1));
    let s = stdout(&o);
    assert!(s.contains("FAIL H [homogeneity invariant]"), "{s}");
    assert!(s.contains("homogeneity violated"), "{s}");
    // the other checks still ran
    assert!(s.contains("C4") && s.contains("C9"), "{s}");
}

#[test]
fn gen_singular_vanishes_on_edges() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("w.txt"), "kind = wedge\ntheta = 270deg\n").unwrap();
    let o = run(dir.path(), &["gen", "--kind", "singular", "--geom", "w.txt", "--lambda", "0.6666666666666666", "--level", "6", "--out", "g"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = Snapshot::load(&dir.path().join("g/field.psnp")).unwrap();
    let f = s.to_field(BoundingBox::new([-0.5, -0.5], 1.0)).unwrap();
    let n = f.grid.n;
    // cells adjacent to the positive x axis (first edge) and negative y axis (second edge)
    let h = f.grid.spacing();
    for i in 0..n {
        for j in 0..n {
            let c = f.grid.center(i, j);
            let v = f.at(i, j);
            if c[0] > 0.0 && c[1] < 0.0 {
                assert_eq!(v, 0.0);
            }
            if c[0] > 0.0 && (c[1] - 0.5 * h).abs() < 1e-12 {
                let r = c[0].hypot(c[1]);
                let phi = c[1].atan2(c[0]);
                assert!(v.abs() <= r.powf(2.0 / 3.0) * (2.0 / 3.0) * phi * (1.0 + 1e-12));
            }
        }
    }
}

#[test]
fn wavelet_atom_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["gen", "--kind", "wavelet-atom", "--j", "4", "--k1", "3", "--k2", "5", "--type", "2", "--level", "7", "--out", "a"]);
    assert_eq!(o.status.code(), Some(0));
    let f = Snapshot::load(&dir.path().join("a/field.psnp")).unwrap().to_field(BoundingBox::unit()).unwrap();
    let t = dwt_forward(&f, &WaveletSystem::new(4).unwrap(), 7).unwrap();
    for (idx, c) in t.entries() {
        if (idx.level, idx.k, idx.ty) == (4, [3, 5], 2) {
            assert!((c - 1.0).abs() < 1e-12);
        } else {
            assert!(c.abs() < 1e-12, "{idx:?} {c}");
        }
    }
}

#[test]
fn bump_peaks_near_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["gen", "--kind", "bump", "--level", "6", "--out", "b"]);
    assert_eq!(o.status.code(), Some(0));
    let f = Snapshot::load(&dir.path().join("b/field.psnp")).unwrap();
    let max = f.values.iter().cloned().fold(0.0, f64::max);
    // the nearest cell center is h/√2 from the peak
    assert!(max <= 1.0 && max > 0.998, "{max}");
}

#[test]
fn outputs_are_deterministic_and_confined() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("l.txt"), "kind = lshape\n").unwrap();
    for out in ["r1", "r2"] {
        let o = run(dir.path(), &["gen", "--kind", "singular", "--geom", "l.txt", "--level", "7", "--out", &format!("{out}/g")]);
        assert_eq!(o.status.code(), Some(0));
        let field = format!("{out}/g/field.psnp");
        let o = run(dir.path(), &["norms", "--field", &field, "--geom", "l.txt", "--spec", "besov:s=1,p=2,q=2;kondratiev:m=1,p=2,a=0.5", "--out", &format!("{out}/n")]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let o = run(dir.path(), &["rates", "--field", &field, "--geom", "l.txt", "--order", "4", "--max-level", "10", "--out", &format!("{out}/r")]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["g/field.psnp", "n/norms.csv", "n/norm_levels.csv", "r/rates_nonlinear.csv", "r/rates_uniform.csv"] {
        let a = std::fs::read(dir.path().join("r1").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("r2").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let mut top: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    top.sort();
    assert_eq!(top, ["l.txt", "r1", "r2"]);
    let rates = std::fs::read_to_string(dir.path().join("r1/r/rates_uniform.csv")).unwrap();
    assert!(rates.starts_with("method,N,error\n"));
    assert!(rates.lines().rev().nth(1).unwrap() == "alpha,residual");
    let manifest = std::fs::read_to_string(dir.path().join("r1/n/manifest.txt")).unwrap();
    assert!(manifest.contains("input.r1/g/field.psnp = sha256:"));
}

#[test]
fn solve_writes_snapshots_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("l.txt"), "kind = lshape\n").unwrap();
    std::fs::write(dir.path().join("run.cfg"), "level = 5\nT = 0.1\neps = 99\n").unwrap();
    let o = run(dir.path(), &["--config", "run.cfg", "solve", "--geom", "l.txt", "--eps", "0.01", "--M", "2", "--dt", "0.01", "--out", "s"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = parse_kv(&std::fs::read_to_string(dir.path().join("s/manifest.txt")).unwrap()).unwrap();
    // flag beats config, config beats default
    assert_eq!(manifest["param.eps"], "0.01");
    assert_eq!(manifest["param.level"], "5");
    assert_eq!(manifest["param.T"], "0.1");
    let summary = std::fs::read_to_string(dir.path().join("s/summary.csv")).unwrap();
    assert!(summary.contains("max_epsilon,"));
    assert!(summary.contains("steps,10\n"));
    let last = Snapshot::load(&dir.path().join("s/snap_00010.psnp")).unwrap();
    assert_eq!(last.level, 5);
    assert!((last.t - 0.1).abs() < 1e-12);
    let picard = std::fs::read_to_string(dir.path().join("s/picard.csv")).unwrap();
    assert!(picard.lines().count() >= 2);
}

#[test]
fn bad_input_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.txt"), "kind = wedge\n").unwrap();
    let o = run(dir.path(), &["gen", "--kind", "singular", "--geom", "bad.txt", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("wedge needs `theta`"));
    let o = run(dir.path(), &["verify", "nothing", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_besovlab"))
        .current_dir(dir.path())
        .env("BESOVLAB_THREADS", "zero")
        .args(["pencil", "--cap", "90deg"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_besovlab"))
        .current_dir(dir.path())
        .env("BESOVLAB_THREADS", "2")
        .args(["pencil", "--cap", "90deg", "--out", "t"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
}
