use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub const TOOL: &str = concat!("kgsa ", env!("CARGO_PKG_VERSION"));

/// `# kgsa <version> config=<sha256>`, the first line of every CSV artifact.
pub fn header_line(config_hash: &str) -> String {
    format!("# {TOOL} config={config_hash}\n")
}

/// 17 significant digits, which parse back to the same bits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Empty field for an absent value.
pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// A CSV artifact built row by row, starting with the header comment.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(config_hash: &str, columns: &[&str]) -> Self {
        let mut text = header_line(config_hash);
        text.push_str(&columns.join(","));
        text.push('\n');
        Csv { text }
    }

    pub fn row<S: AsRef<str>>(&mut self, fields: &[S]) {
        for (i, f) in fields.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            self.text.push_str(f.as_ref());
        }
        self.text.push('\n');
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.text.into_bytes()
    }
}

/// JSON reports cannot carry comments, so the header travels as the first two fields.
#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    tool: &'a str,
    config_sha256: &'a str,
    report: &'a T,
}

pub fn json<T: Serialize>(config_hash: &str, report: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(&Envelope {
        tool: TOOL,
        config_sha256: config_hash,
        report,
    })
    .expect("reports serialize");
    s.push('\n');
    s.into_bytes()
}

/// Named artifact bytes, written together once a command completes.
#[derive(Default)]
pub struct Artifacts {
    pub files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn write_all(&self, dir: &Path) -> io::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut out = Vec::new();
        for (name, bytes) in &self.files {
            let p = dir.join(name);
            std::fs::write(&p, bytes)?;
            out.push(p);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_starts_with_header_and_columns() {
        let mut c = Csv::new("ab12", &["a", "b"]);
        c.row(&[num(0.1), opt_num(None)]);
        let s = String::from_utf8(c.into_bytes()).unwrap();
        assert_eq!(s, format!("# {TOOL} config=ab12\na,b\n1.0000000000000001e-1,\n"));
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23, 0.0] {
            assert_eq!(num(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn json_envelope_carries_header_fields() {
        let b = json("ff", &vec![1, 2]);
        let v: serde_json::Value = serde_json::from_slice(&b).unwrap();
        assert_eq!(v["tool"], TOOL);
        assert_eq!(v["config_sha256"], "ff");
        assert_eq!(v["report"][1], 2);
    }
}
