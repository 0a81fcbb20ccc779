#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mixweigh"))
}

pub fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

pub fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

pub const POPULATION: &str = "marker,allele,frequency
A,10,0.2
A,11,0.3
A,12,0.25
A,13,0.25
B,8,0.1
B,9,0.4
B,9.3,0.3
B,10,0.2
C,14,0.5
C,15,0.3
C,16,0.2
D,6,0.35
D,7,0.4
D,8,0.25
";

pub const SUSPECT: &str = "marker,allele1,allele2\nA,10,12\nB,9,9.3\nC,14,16\nD,6,8\n";
pub const VICTIM: &str = "marker,allele1,allele2\nA,11,13\nB,8,10\nC,15,15\nD,7,7\n";

/// Population, two profiles and a simulated two-person EPG `E1.csv` in `dir`.
pub fn case(dir: &Path) {
    write(dir, "pop.csv", POPULATION);
    write(dir, "s.csv", SUSPECT);
    write(dir, "v.csv", VICTIM);
    let out = run(
        dir,
        &[
            "simulate", "--profiles", "s.csv", "v.csv", "--mu", "800", "--sigma", "0.5", "--xi", "0.05",
            "--phi", "0.7,0.3", "--seed", "4", "--label", "E1", "--out", ".",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

pub fn manifest(dir: &Path, name: &str, label: &str, known: &[&str], unknowns: usize) -> PathBuf {
    let known: Vec<String> = known.iter().map(|k| format!("\"{k}\"")).collect();
    write(
        dir,
        name,
        &format!(
            "{{\"label\": \"{label}\", \"samples\": [\"E1.csv\"], \"known\": [{}], \"unknowns\": {unknowns}, \"population\": \"pop.csv\", \"sample_size\": 100}}",
            known.join(", ")
        ),
    )
}
