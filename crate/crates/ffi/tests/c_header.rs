use std::path::PathBuf;
use std::process::Command;

use railgnss::atmosphere::{klobuchar_delay, TropoModel};
use railgnss::geodesy::AzEl;
use railgnss::ingest::IonoParams;

/// Compiles a C program against the generated header and static library.
#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("librailgnss_ffi.a");
    assert!(lib.exists(), "missing {}", lib.display());
    let exe = tempfile::tempdir().unwrap();
    let bin = exe.path().join("smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("cc available");
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    let text = String::from_utf8(out.stdout).unwrap();
    let fields: Vec<&str> = text.split_whitespace().collect();
    assert_eq!(fields[0], env!("CARGO_PKG_VERSION"));
    let iono = klobuchar_delay(
        Some(&IonoParams {
            alpha: [1.1176e-8, 7.4506e-9, -5.9605e-8, -5.9605e-8],
            beta: [9.0112e4, 0.0, -1.9661e5, -6.5536e4],
        }),
        0.8,
        0.1,
        AzEl::new(1.2, 0.4),
        50_000.0,
        1575.42e6,
    )
    .unwrap();
    let tropo = TropoModel { relative_humidity: 0.5 }.slant_delay(AzEl::new(0.0, 0.4), 120.0).unwrap();
    assert!((fields[1].parse::<f64>().unwrap() - iono).abs() < 1e-6);
    assert!((fields[2].parse::<f64>().unwrap() - tropo).abs() < 1e-6);
}
