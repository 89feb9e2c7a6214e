//! Runs `kgsa verify` twice on the default configuration and prints one line per criterion.
//! Criteria 1 to 8 are read from the first run's report; 9 compares the two output trees.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Stdio};

use kgsa_cli::commands::{VerifyReport, VERIFY_REPORT};

const SEED: &str = "1";

/// Progress stays on stderr; the criterion lines come from the report.
fn verify(out: &Path) -> i32 {
    let status = Command::new(env!("CARGO_BIN_EXE_kgsa"))
        .args(["verify", "--seed", SEED, "--out"])
        .arg(out)
        .stdout(Stdio::null())
        .status()
        .expect("kgsa runs");
    status.code().expect("kgsa exits normally")
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn report(dir: &Path) -> VerifyReport {
    #[derive(serde::Deserialize)]
    struct Envelope {
        report: VerifyReport,
    }
    let bytes = std::fs::read(dir.join(VERIFY_REPORT)).expect("verify writes its report");
    serde_json::from_slice::<Envelope>(&bytes).expect("report parses").report
}

#[test]
fn acceptance() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let code_a = verify(a.path());
    let code_b = verify(b.path());
    let r = report(a.path());

    let mut lines: Vec<(bool, String)> = r.criteria.iter().map(|c| (c.pass, c.line())).collect();
    assert_eq!(r.criteria.iter().map(|c| c.id).collect::<Vec<_>>(), (1..=8).collect::<Vec<u32>>());

    let (ta, tb) = (tree(a.path()), tree(b.path()));
    let differing: Vec<&String> = ta.keys().chain(tb.keys()).filter(|k| ta.get(*k) != tb.get(*k)).collect();
    let same = differing.is_empty() && code_a == code_b;
    lines.push((
        same,
        format!(
            "{} 9 determinism: {} files, seed {SEED}, exit codes {code_a}/{code_b}, differing {differing:?}",
            if same { "PASS" } else { "FAIL" },
            ta.len()
        ),
    ));
    for (_, l) in &lines {
        println!("{l}");
    }
    let expected_code = if r.pass { 0 } else { 1 };
    assert_eq!(code_a, expected_code, "exit code must reflect the report");
    let failed: Vec<&str> = lines.iter().filter(|(p, _)| !p).map(|(_, l)| l.as_str()).collect();
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.join("\n"));
}
