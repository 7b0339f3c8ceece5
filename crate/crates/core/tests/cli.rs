use std::path::Path;
use std::process::{Command, Output};

fn qrw(db: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qrw"))
        .arg("--db")
        .arg(db)
        .args(args)
        .output()
        .expect("qrw runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("{e}: {}\n{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr))
    })
}

const BELL_PAIRS: &str = "OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[3];\n\
h q[0];\nh q[0];\ncx q[0],q[1];\ncx q[0],q[1];\nccx q[0],q[1],q[2];\nrz(pi/4) q[2];\nrz(-pi/4) q[2];\nt q[1];\n";

#[test]
fn ingest_rewrite_export_audit() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("db");
    let src = dir.path().join("in.qasm");
    std::fs::write(&src, BELL_PAIRS).unwrap();
    let s = src.to_str().unwrap();

    let out = qrw(&db, &["ingest", "--input", s, "--label", "c", "--target", "clifford-rz"]);
    assert!(out.status.success());
    assert_eq!(json(&out)["ingest"]["gates_out"], 22);

    let out = qrw(&db, &["--threads", "2", "rewrite", "--label", "c", "--rules", "a,b,f", "--duration", "5s"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["before"]["gates"], 22);
    assert!(v["after"]["gates"].as_u64().unwrap() < 22);

    let out = qrw(&db, &["audit", "--label", "c"]);
    assert!(out.status.success());
    assert_eq!(json(&out)["ok"], true);

    let qasm = dir.path().join("out.qasm");
    let native = dir.path().join("out.csv");
    assert!(qrw(&db, &["export", "--label", "c", "--out", qasm.to_str().unwrap()]).status.success());
    assert!(qrw(&db, &["export", "--label", "c", "--out", native.to_str().unwrap()]).status.success());
    let text = std::fs::read_to_string(&qasm).unwrap();
    assert!(text.starts_with("OPENQASM 2.0;"));
    assert!(std::fs::read_to_string(&native).unwrap().starts_with("id,prev_q1"));

    let out = qrw(&db, &["ingest", "--input", native.to_str().unwrap(), "--label", "copy"]);
    assert!(out.status.success());
    assert_eq!(json(&out)["circuit"]["gates"], v["after"]["gates"]);
}

#[test]
fn check_equiv_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("db");
    let a = dir.path().join("a.qasm");
    let b = dir.path().join("b.qasm");
    let c = dir.path().join("c.qasm");
    std::fs::write(&a, "OPENQASM 2.0;\nqreg q[3];\ncx q[0],q[1];\ncx q[1],q[2];\n").unwrap();
    std::fs::write(&b, "OPENQASM 2.0;\nqreg q[3];\ncx q[0],q[1];\ncx q[1],q[2];\nh q[2];\nh q[2];\n").unwrap();
    std::fs::write(&c, "OPENQASM 2.0;\nqreg q[3];\ncx q[1],q[2];\ncx q[0],q[1];\n").unwrap();
    let run = |x: &Path, y: &Path| qrw(&db, &["check-equiv", x.to_str().unwrap(), y.to_str().unwrap()]);

    let same = run(&a, &b);
    assert_eq!(same.status.code(), Some(0));
    assert_eq!(json(&same)["verdict"], "equivalent");
    let differ = run(&a, &c);
    assert_eq!(differ.status.code(), Some(1));
    let missing = run(&a, &dir.path().join("nope.qasm"));
    assert_eq!(missing.status.code(), Some(3));
}

#[test]
fn syntax_errors_report_position() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("db");
    let bad = dir.path().join("bad.qasm");
    std::fs::write(&bad, "OPENQASM 2.0;\nqreg q[2];\ncx q[0],q[7];\n").unwrap();
    let out = qrw(&db, &["ingest", "--input", bad.to_str().unwrap(), "--label", "x"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn partition_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("db");
    let src = dir.path().join("in.qasm");
    let mut text = String::from("OPENQASM 2.0;\nqreg q[4];\n");
    for i in 0..200 {
        text.push_str(&format!("cx q[{}],q[{}];\nt q[{}];\n", i % 4, (i + 1) % 4, i % 4));
    }
    std::fs::write(&src, text).unwrap();
    assert!(qrw(&db, &["ingest", "--input", src.to_str().unwrap(), "--label", "p"]).status.success());
    let out_dir = dir.path().join("parts");
    let out = qrw(
        &db,
        &["partition", "--label", "p", "--max-gates", "40", "--max-t", "10", "--batch", "17", "--out", out_dir.to_str().unwrap()],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    let parts = manifest["partitions"].as_array().unwrap();
    assert_eq!(parts.len() as u64, json(&out)["partitions"].as_u64().unwrap());
    let gates: u64 = parts.iter().map(|p| p["gates"].as_u64().unwrap()).sum();
    assert_eq!(gates, 400);
    for p in parts {
        assert!(p["gates"].as_u64().unwrap() <= 40 && p["t_gates"].as_u64().unwrap() <= 10);
        assert!(out_dir.join(p["file"].as_str().unwrap()).exists());
    }
}

#[test]
fn bench_utility_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("u.csv");
    let out = qrw(
        &dir.path().join("db"),
        &["bench", "utility", "--sizes", "500", "--p-r", "0.1", "--qubits", "4", "--out", csv.to_str().unwrap()],
    );
    assert!(out.status.success());
    let text = std::fs::read_to_string(csv).unwrap();
    assert!(text.starts_with("engine,gates,p_r,seconds"));
    assert_eq!(text.lines().count(), 3);
}
