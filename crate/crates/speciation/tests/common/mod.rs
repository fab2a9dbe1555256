#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_speciation"))
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

/// Comment line, header and rows of a CSV written by the binary.
pub struct Csv {
    pub comment: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn parse(text: &str) -> Self {
        let (comment, rest) = text.split_once('\n').unwrap();
        let mut r = csv::Reader::from_reader(rest.as_bytes());
        let header = r.headers().unwrap().iter().map(String::from).collect();
        let rows = r
            .records()
            .map(|rec| rec.unwrap().iter().map(String::from).collect())
            .collect();
        Self {
            comment: comment.to_string(),
            header,
            rows,
        }
    }

    pub fn column(&self, name: &str) -> Vec<f64> {
        let j = self
            .header
            .iter()
            .position(|h| h == name)
            .unwrap_or_else(|| panic!("no column {name}"));
        self.rows.iter().map(|r| r[j].parse().unwrap()).collect()
    }
}

pub const SMALL_PROFILE: &str = r#"
[schedule]
kind = "vp"

[mixture]
kind = "symmetric"
d = 100

[grid]
axis = "u"
start = 0.05
stop = 3.0
count = 64

[estimator]
n_samples = 20000
"#;

pub const SMALL_SWEEP: &str = r#"
[schedule]
kind = "edm"

[mixture]
kind = "symmetric"
d = 64

[grid]
axis = "u"
start = 0.25
stop = 3.0
count = 64

[sweep]
d_list = [64, 256]

[estimator]
n_samples = 2000
"#;

pub const SMALL_TRACK: &str = r#"
[schedule]
kind = "vp"

[mixture]
kind = "symmetric"
d = 8

[partition]
set_a = [0]
set_b = [1]

[guidance]
omega = 2.0
sigma_low = 0.9

[estimator]
steps = 64
n_trajectories = 40
"#;
