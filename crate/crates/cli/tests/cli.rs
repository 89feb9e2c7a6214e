use std::path::Path;
use std::process::{Command, Output};

fn kgsa(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kgsa"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("kgsa runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn malformed_or_invalid_config_exits_two() {
    let d = tempfile::tempdir().unwrap();
    for (name, text) in [
        ("unknown.toml", "bogus = 1\n"),
        ("syntax.toml", "[weyl\n"),
        ("negative.toml", "[geodesic]\ntol = -1.0\n"),
        ("rule.toml", "[potential]\nexponent = 2.0\n"),
    ] {
        let cfg = write(d.path(), name, text);
        let o = kgsa(&["potential", "--config", &cfg], &d.path().join("o"));
        assert_eq!(o.status.code(), Some(2), "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = kgsa(&["potential", "--tol", "0"], &d.path().join("o"));
    assert_eq!(o.status.code(), Some(2));
    let o = kgsa(&["nonsense"], &d.path().join("o"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn weyl_without_pz_is_a_limit_point_row() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "pz0.toml", "[weyl]\np_z = 0.0\n");
    let out = d.path().join("o");
    let o = kgsa(&["weyl", "--config", &cfg], &out);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(out.join("weyl-report.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(2).collect();
    assert_eq!(rows.len(), 2);
    for r in rows {
        let f: Vec<&str> = r.split(',').collect();
        assert_eq!(&f[4..7], ["LimitPoint", "0", "0"], "{r}");
    }
}

#[test]
fn weyl_default_is_limit_circle_with_psi_norm() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("o");
    let o = kgsa(&["weyl"], &out);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(out.join("weyl-report.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(2).unwrap().split(',').collect();
    assert_eq!(&row[4..7], ["LimitCircle", "2", "2"]);
    assert!(row[8].parse::<f64>().unwrap() > 0.0);
}

#[test]
fn every_artifact_carries_the_header() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("o");
    for c in ["potential", "geodesic", "cone", "diamond", "weyl"] {
        let o = kgsa(&[c], &out);
        assert_eq!(o.status.code(), Some(0), "{c}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let mut hashes = std::collections::BTreeSet::new();
    for e in std::fs::read_dir(&out).unwrap() {
        let p = e.unwrap().path();
        let text = std::fs::read_to_string(&p).unwrap();
        let hash = if p.extension().unwrap() == "csv" {
            let first = text.lines().next().unwrap();
            let rest = first.strip_prefix("# kgsa 0.1.0 config=").unwrap_or_else(|| panic!("{p:?}: {first}"));
            rest.to_string()
        } else {
            let v: serde_json::Value = serde_json::from_str(&text).unwrap();
            assert_eq!(v["tool"], "kgsa 0.1.0");
            v["config_sha256"].as_str().unwrap().to_string()
        };
        assert_eq!(hash.len(), 64);
        hashes.insert(hash);
    }
    assert_eq!(hashes.len(), 1);
}

#[test]
fn sampling_commands_are_reproducible_and_seeded() {
    let d = tempfile::tempdir().unwrap();
    let run = |seed: &str, dir: &str| {
        let out = d.path().join(dir);
        let o = kgsa(&["cone", "--seed", seed], &out);
        assert_eq!(o.status.code(), Some(0));
        std::fs::read(out.join("cone-report.csv")).unwrap()
    };
    let (a, b, c) = (run("7", "a"), run("7", "b"), run("8", "c"));
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn threads_do_not_change_the_config_hash() {
    let d = tempfile::tempdir().unwrap();
    let first = |args: &[&str], dir: &str| {
        let out = d.path().join(dir);
        assert_eq!(kgsa(args, &out).status.code(), Some(0));
        std::fs::read(out.join("spike-table.csv")).unwrap()
    };
    assert_eq!(first(&["potential", "--threads", "1"], "a"), first(&["potential", "--threads", "2"], "b"));
}

#[test]
fn help_documents_default_config() {
    let o = Command::new(env!("CARGO_BIN_EXE_kgsa")).arg("--help").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let s = String::from_utf8(o.stdout).unwrap();
    for key in ["[potential]", "calibration_tol", "[normmap]", "target = 0.5", "--threads", "--tol"] {
        assert!(s.contains(key), "missing {key}");
    }
}
