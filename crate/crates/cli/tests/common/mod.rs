#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::io::Write;
use std::sync::OnceLock;

use gestr_core::cnn::save_weights;
use gestr_testkit::reference_model;

pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn gestr(args: &[&str]) -> Output {
    gestr_with_stdin(args, None)
}

pub fn gestr_with_stdin(args: &[&str], stdin: Option<&str>) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_gestr"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("spawn gestr");
    {
        let mut pipe = child.stdin.take().unwrap();
        if let Some(text) = stdin {
            pipe.write_all(text.as_bytes()).unwrap();
        }
    }
    let out = child.wait_with_output().unwrap();
    Output {
        code: out.status.code().expect("exited normally"),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// The `[section]` table echoed on stderr before a run.
pub fn echoed_config(stderr: &str) -> toml::Table {
    let block: String = stderr
        .lines()
        .skip_while(|l| !l.starts_with("# resolved config"))
        .skip(1)
        .take_while(|l| !l.is_empty())
        .map(|l| format!("{l}\n"))
        .collect();
    toml::from_str(&block).expect("echoed config is TOML")
}

/// Weight file of the shared reference model (trained once, then cached).
pub fn reference_weights() -> &'static Path {
    static PATH: OnceLock<PathBuf> = OnceLock::new();
    PATH.get_or_init(|| {
        let dir = Path::new(env!("CARGO_TARGET_TMPDIR"));
        let model = reference_model(dir);
        let path = dir.join(format!("cli-reference-{}.gstr", std::process::id()));
        save_weights(&model, &path).unwrap();
        path
    })
}
