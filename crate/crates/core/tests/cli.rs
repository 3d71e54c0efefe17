use std::process::{Command, Output};

fn katoklab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_katoklab"))
        .args(args)
        .env_remove("KATOKLAB_THREADS")
        .output()
        .unwrap()
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = katoklab(&["orbit", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn bad_parameters_give_config_error_json() {
    let out = katoklab(&["--alpha=1.5", "orbit", "--x", "0.1", "--y", "0.2"]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "config");
}

#[test]
fn missing_config_file_is_a_config_error() {
    let out = katoklab(&[
        "--config",
        "/nonexistent/katoklab.json",
        "orbit",
        "--x",
        "0.1",
        "--y",
        "0.2",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_is_honoured() {
    let dir = std::env::temp_dir().join(format!("katoklab-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("run.json");
    std::fs::write(
        &cfg,
        r#"{ "seed": 7, "params": { "alpha": 0.3, "r0": 0.05 } }"#,
    )
    .unwrap();
    let out = katoklab(&[
        "--config",
        cfg.to_str().unwrap(),
        "orbit",
        "--x",
        "0.3",
        "--y",
        "0.2",
        "--steps",
        "2",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(
        text.starts_with("# katoklab orbit alpha=0.3 r0=0.05 seed=7"),
        "{text}"
    );

    std::fs::write(&cfg, r#"{ "sed": 7 }"#).unwrap();
    let out = katoklab(&[
        "--config",
        cfg.to_str().unwrap(),
        "orbit",
        "--x",
        "0.3",
        "--y",
        "0.2",
    ]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn tables_carry_provenance_and_are_reproducible() {
    let a = katoklab(&[
        "--seed",
        "11",
        "correlations",
        "--lags",
        "5",
        "--samples",
        "200",
    ]);
    let b = katoklab(&[
        "--seed",
        "11",
        "correlations",
        "--lags",
        "5",
        "--samples",
        "200",
    ]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    let mut rows = text.lines();
    let head = rows.next().unwrap();
    for key in ["alpha=", "r0=", "seed=11", "ode_tol="] {
        assert!(head.contains(key), "{head}");
    }
    assert!(rows.next().unwrap().starts_with("lag,"));
    assert_eq!(rows.count(), 6);
    assert!(String::from_utf8_lossy(&a.stderr).starts_with("correlations:"));
}

#[test]
fn out_flag_writes_the_artifact() {
    let path = std::env::temp_dir().join(format!("katoklab-sn-{}.csv", std::process::id()));
    let out = katoklab(&["--out", path.to_str().unwrap(), "sn-count", "--nmax", "40"]);
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::remove_file(&path).ok();
    assert!(text.lines().nth(1) == Some("n,s_n"));
    assert_eq!(text.lines().count(), 42);
}

#[test]
fn threads_zero_is_rejected() {
    let out = katoklab(&["--threads", "0", "orbit", "--x", "0.1", "--y", "0.2"]);
    assert_eq!(out.status.code(), Some(2));
}
