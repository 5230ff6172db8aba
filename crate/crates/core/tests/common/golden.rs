//! Pinned CLI configurations whose CSV outputs are stored under `tests/golden`.
//! Run with `CMKV_BLESS=1` to regenerate them.

use std::path::{Path, PathBuf};
use std::process::Command;

pub struct GoldenConfig {
    pub name: &'static str,
    pub args: &'static [&'static str],
}

pub const CONFIGS: [GoldenConfig; 3] = [
    GoldenConfig {
        name: "finite_example1",
        args: &[
            "simulate", "finite", "--model", "{models}/example1.json", "--n", "50", "--t", "1", "--dt", "0.001",
            "--seed", "7", "--reps", "2", "--every", "50", "--jump-log",
        ],
    },
    GoldenConfig {
        name: "limit_arctan",
        args: &[
            "simulate", "limit", "--model", "{models}/arctan.json", "--m", "40", "--t", "0.5", "--dt", "0.005",
            "--seed", "11", "--reps", "3", "--every", "10",
        ],
    },
    GoldenConfig {
        name: "multipop_tree",
        args: &[
            "simulate", "multipop", "--model", "{models}/tree.json", "--system", "limit", "--n", "8", "--t", "0.5",
            "--dt", "0.01", "--seed", "0x2a", "--reps", "2", "--every", "5",
        ],
    },
];

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_cmkv")
}

/// Runs `config` into `out` and returns the exit status code.
pub fn run_config(config: &GoldenConfig, out: &Path, jobs: Option<usize>, deterministic: bool) -> i32 {
    let models = golden_dir().join("models");
    let mut cmd = Command::new(bin());
    for a in config.args {
        cmd.arg(a.replace("{models}", models.to_str().unwrap()));
    }
    cmd.arg("--out").arg(out);
    if let Some(j) = jobs {
        cmd.arg("--jobs").arg(j.to_string());
    }
    if deterministic {
        cmd.env("CMKV_DETERMINISTIC", "1");
    } else {
        cmd.env_remove("CMKV_DETERMINISTIC");
    }
    cmd.status().expect("run cmkv").code().unwrap_or(-1)
}

/// CSV files of a run directory, sorted by name, with their contents.
pub fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

pub fn blessing() -> bool {
    std::env::var("CMKV_BLESS").is_ok_and(|v| v == "1")
}

/// Compares a run directory with the stored golden outputs of `config`
/// (or stores them when blessing). Returns a description of the first
/// difference.
pub fn compare_with_golden(config: &GoldenConfig, dir: &Path) -> Result<(), String> {
    let want_dir = golden_dir().join(config.name);
    let got = csv_files(dir);
    if blessing() {
        let _ = std::fs::remove_dir_all(&want_dir);
        std::fs::create_dir_all(&want_dir).unwrap();
        for (name, bytes) in &got {
            std::fs::write(want_dir.join(name), bytes).unwrap();
        }
        return Ok(());
    }
    if !want_dir.is_dir() {
        return Err(format!("no golden outputs in {}", want_dir.display()));
    }
    let want = csv_files(&want_dir);
    let names = |v: &[(String, Vec<u8>)]| v.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>();
    if names(&got) != names(&want) {
        return Err(format!("file lists differ: {:?} vs {:?}", names(&got), names(&want)));
    }
    for ((name, a), (_, b)) in got.iter().zip(&want) {
        if a != b {
            return Err(format!("{name} differs from its golden copy"));
        }
    }
    Ok(())
}
