use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Stdio};

use dr_core::bench::{Comparison, QualityReport};

const DRBENCH: &str = env!("CARGO_BIN_EXE_drbench");
const DRCLIENT: &str = env!("CARGO_BIN_EXE_drclient");
const DRSERVER: &str = env!("CARGO_BIN_EXE_drserver");

fn run(cmd: &mut Command) -> (i32, String, String) {
    let o = cmd.output().unwrap();
    (
        o.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&o.stdout).into_owned(),
        String::from_utf8_lossy(&o.stderr).into_owned(),
    )
}

fn write(p: &Path, s: &str) {
    std::fs::write(p, s).unwrap();
}

#[test]
fn generate_run_evaluate_compare() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    write(&t.join("scene.json"), r#"{"frame_count": 6}"#);
    let (code, _, err) = run(Command::new(DRBENCH).args(["generate", "--config"]).arg(t.join("scene.json")).arg("--out").arg(t.join("bundle")));
    assert_eq!(code, 0, "{err}");

    let (code, out, err) = run(Command::new(DRCLIENT)
        .arg("--bundle")
        .arg(t.join("bundle"))
        .args(["--mode", "local", "--afap", "--out"])
        .arg(t.join("run")));
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("6 results"), "{out}");

    let report_path = t.join("q.json");
    let (code, _, err) = run(Command::new(DRBENCH)
        .arg("evaluate")
        .arg("--results")
        .arg(t.join("run"))
        .arg("--bundle")
        .arg(t.join("bundle"))
        .arg("--out")
        .arg(&report_path));
    assert_eq!(code, 0, "{err}");
    let q: QualityReport = serde_json::from_slice(&std::fs::read(&report_path).unwrap()).unwrap();
    assert_eq!(q.frames, 6);
    assert_eq!(q.metrics["mask_iou"].mean, 1.0);

    let (code, table, err) = run(Command::new(DRBENCH)
        .arg("compare")
        .arg(&report_path)
        .arg(&report_path)
        .arg("--out")
        .arg(t.join("cmp.json")));
    assert_eq!(code, 0, "{err}");
    assert!(table.contains("inpaint_psnr_db"));
    let c: Comparison = serde_json::from_slice(&std::fs::read(t.join("cmp.json")).unwrap()).unwrap();
    assert!(c.regressions.is_empty());

    // a report that lost 2 dB of PSNR is a regression
    let mut worse = q.clone();
    worse.metrics.get_mut("inpaint_psnr_db").unwrap().mean -= 2.0;
    write(&t.join("worse.json"), &serde_json::to_string(&worse).unwrap());
    let (code, table, _) = run(Command::new(DRBENCH).arg("compare").arg(&report_path).arg(t.join("worse.json")));
    assert_eq!(code, 1);
    assert!(table.contains("REGRESSION"));
}

#[test]
fn client_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let closed = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    write(&t.join("scene.json"), r#"{"frame_count": 2}"#);

    let (code, _, _) = run(Command::new(DRCLIENT)
        .args(["--server", &closed.to_string(), "--generate"])
        .arg(t.join("scene.json"))
        .arg("--out")
        .arg(t.join("o1")));
    assert_eq!(code, 2);
    assert!(!t.join("o1").exists());

    let (code, _, _) = run(Command::new(DRCLIENT).arg("--bundle").arg(t.join("missing")).arg("--out").arg(t.join("o2")));
    assert_eq!(code, 4);

    write(&t.join("bad.json"), "{ nope");
    let (code, _, _) = run(Command::new(DRCLIENT).arg("--generate").arg(t.join("bad.json")).arg("--out").arg(t.join("o3")));
    assert_eq!(code, 4);

    let (code, _, _) = run(Command::new(DRCLIENT).args(["--fps", "30"]));
    assert_eq!(code, 1, "usage errors stay clear of the connect-failure code");
}

#[test]
fn server_bind_failure_and_log_override() {
    let busy = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let (code, _, err) = run(Command::new(DRSERVER).args(["--tcp", &busy.local_addr().unwrap().to_string(), "--ws", "off"]));
    assert_eq!(code, 1);
    assert!(err.contains("cannot bind"), "{err}");

    // --log off would silence the banner; the environment wins
    let mut child = Command::new(DRSERVER)
        .args(["--tcp", "127.0.0.1:0", "--ws", "127.0.0.1:0", "--log", "off"])
        .env("DRPIPE_LOG", "info")
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap()).read_line(&mut line).unwrap();
    child.kill().unwrap();
    let _ = child.wait();
    assert!(line.contains("listening"), "{line}");
}
