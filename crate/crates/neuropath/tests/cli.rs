use std::process::Command;

fn neuropath(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_neuropath"))
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .unwrap()
}

#[test]
fn out_of_range_alpha_is_a_usage_error() {
    let out = tempfile::tempdir().unwrap();
    let o = neuropath(&["localize", "--alpha", "1.5", "--out", out.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--alpha"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(neuropath(&["train", "--no-such-flag"]).status.code(), Some(1));
}

#[test]
fn missing_data_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nothing-here");
    let o = neuropath(&[
        "train",
        "--data-dir",
        missing.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn help_exits_cleanly() {
    let o = neuropath(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("pipeline"));
}
