use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mlncla(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mlncla"))
        .args(args)
        .env_remove("MLNCLA_GROUNDING_CAP")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const MODEL: &str = "\
Round(object)
Rolls(object)
1.5 Round(x) => Rolls(x)
";

const DB: &str = "\
Round(Ball)
Rolls(Ball)
Round(Orange)
Rolls(Orange)
!Round(Brick)
";

#[test]
fn infer_prints_one_line_per_query_atom() {
    let dir = tempfile::tempdir().unwrap();
    let mln = write(dir.path(), "m.mln", MODEL);
    let db = write(dir.path(), "e.db", "Round(Ball)\n!Round(Brick)\n");
    let out = mlncla(&["infer", "--mln", &mln, "--db", &db, "--query", "Rolls", "--method", "exact"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<(&str, f64)> = text
        .lines()
        .map(|l| {
            let (a, p) = l.split_once('\t').unwrap();
            (a, p.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 2);
    let p = |name: &str| rows.iter().find(|r| r.0 == name).unwrap().1;
    let sig = 1.0 / (1.0 + (-1.5f64).exp());
    assert!((p("Rolls(Ball)") - sig).abs() < 1e-12);
    assert!((p("Rolls(Brick)") - 0.5).abs() < 1e-12);
}

#[test]
fn learn_writes_model_and_evidence_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mln = write(dir.path(), "m.mln", MODEL);
    let db = write(dir.path(), "e.db", DB);
    let out_path = dir.path().join("learned.mln");
    let out = mlncla(&["learn", "--mln", &mln, "--db", &db, "--out", out_path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let learned = fs::read_to_string(&out_path).unwrap();
    assert!(learned.contains("Round(x) => Rolls(x)"));
    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("learned.mln.z.json")).unwrap()).unwrap();
    let rows = sidecar.as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["z"], 5);
    assert!(rows[0]["weight"].as_f64().unwrap() > 0.0);
}

#[test]
fn knowledge_list_commands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let mln = write(dir.path(), "m.mln", MODEL);
    let db1 = write(dir.path(), "a.db", "Round(Ball)\nRolls(Ball)\n");
    let db2 = write(dir.path(), "b.db", "Round(Ball)\n");
    let kl0 = dir.path().join("kl0.json");
    let kl1 = dir.path().join("kl1.json");
    let out = mlncla(&["kl-init", "--mln", &mln, "--out", kl0.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = mlncla(&[
        "cla-step", "--kl", kl0.to_str().unwrap(), "--db", &db1, "--strategy", "balanced",
        "--out", kl1.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&kl1).unwrap()).unwrap();
    let t = &v["categories"][0]["triplets"][0];
    assert_eq!(t["z"], 2);

    // Everything in the second database is already known.
    let kl2 = dir.path().join("kl2.json");
    let args = ["cla-step", "--kl", kl1.to_str().unwrap(), "--db", &db2, "--out", kl2.to_str().unwrap()];
    let out = mlncla(&args);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("structure"));
    assert!(!kl2.exists());
    let mut with_hook = args.to_vec();
    with_hook.extend(["--hook", "weights-only"]);
    let out = mlncla(&with_hook);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&kl2).unwrap()).unwrap();
    assert_eq!(v["categories"][0]["triplets"][0]["z"], 3);
}

#[test]
fn validation_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let mln = write(dir.path(), "m.mln", MODEL);
    let bad = write(dir.path(), "bad.db", "Flies(Ball)\n");
    let out = mlncla(&["infer", "--mln", &mln, "--db", &bad, "--query", "Rolls"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Flies"));
    let broken = write(dir.path(), "broken.mln", "Round(object)\n1.0 Round(x) =>\n");
    let out = mlncla(&["infer", "--mln", &broken, "--query", "Round"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn grounding_cap_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let mln = write(dir.path(), "m.mln", MODEL);
    let db = write(dir.path(), "e.db", DB);
    let out = Command::new(env!("CARGO_BIN_EXE_mlncla"))
        .args(["infer", "--mln", &mln, "--db", &db, "--query", "Rolls"])
        .env("MLNCLA_GROUNDING_CAP", "1")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn gen_data_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = mlncla(&["gen-data", "--seed", "4", "--train-objects", "6", "--test-objects", "3", "--out-dir", d.path().to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["model.mln", "train.db", "test.db"] {
        let x = fs::read_to_string(a.path().join(f)).unwrap();
        assert_eq!(x, fs::read_to_string(b.path().join(f)).unwrap());
        assert!(!x.is_empty());
    }
    assert!(fs::read_to_string(a.path().join("test.db")).unwrap().contains("Te01"));
}
