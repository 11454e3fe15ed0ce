//! The `detctx` binary: subcommands, artifacts and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn toy(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/toy").join(name)
}

fn detctx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_detctx")).args(args).output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn stage_subcommands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let ann = toy("annotations.json");
    let lcr = d.join("lcr.json");
    let stdout = ok(&detctx(&[
        "lcr-transform",
        "--annotations",
        s(&ann),
        "--out",
        s(&lcr),
        "--standard",
        "sod",
        "--enlarge",
        "0.15",
    ]));
    assert!(stdout.contains("twin labels added"));

    let graph = d.join("graph.json");
    ok(&detctx(&[
        "scf-build-graph",
        "--annotations",
        s(&ann),
        "--categories",
        "door,knob,stair",
        "--out",
        s(&graph),
    ]));
    let hyper = d.join("hyper.json");
    std::fs::write(&hyper, r#"{"epochs": 20, "hidden_dim": 16}"#).unwrap();
    let weights = d.join("weights.json");
    ok(&detctx(&[
        "scf-train",
        "--graph",
        s(&graph),
        "--embeddings",
        s(&toy("vocab.txt")),
        "--features",
        s(&toy("features.json")),
        "--hyper",
        s(&hyper),
        "--out",
        s(&weights),
        "--seed",
        "3",
    ]));
    let probs = d.join("probs.json");
    ok(&detctx(&[
        "scf-project",
        "--graph",
        s(&graph),
        "--weights",
        s(&weights),
        "--embeddings",
        s(&toy("vocab.txt")),
        "--features",
        s(&toy("features.json")),
        "--out",
        s(&probs),
    ]));
    let p: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&probs).unwrap()).unwrap();
    assert_eq!(p["probabilities"].as_array().unwrap().len(), 3);

    let rules = d.join("rules.json");
    std::fs::write(
        &rules,
        r#"[{"Subject": "door", "Object": "stair", "pred": "under", "t": "overlap"}]"#,
    )
    .unwrap();
    let derived = d.join("derived.json");
    let stdout = ok(&detctx(&[
        "scr-derive",
        "--annotations",
        s(&ann),
        "--rules",
        s(&rules),
        "--out",
        s(&derived),
    ]));
    assert!(stdout.starts_with("[door, stair]: 0.2"), "{stdout}");

    let refined = d.join("refined.json");
    let stdout = ok(&detctx(&[
        "scr-apply",
        "--detections",
        s(&toy("detections.json")),
        "--rules",
        s(&derived),
        "--masks",
        s(&ann),
        "--out",
        s(&refined),
    ]));
    assert!(stdout.contains("promoted"));

    let report = d.join("report.json");
    let stdout = ok(&detctx(&[
        "evaluate",
        "--annotations",
        s(&lcr),
        "--detections",
        s(&refined),
        "--metric",
        "map",
        "--report",
        s(&report),
    ]));
    assert!(stdout.starts_with("mAP@0.5"), "{stdout}");
    let stdout = ok(&detctx(&[
        "evaluate",
        "--annotations",
        s(&ann),
        "--detections",
        s(&refined),
        "--metric",
        "mr2",
        "--subset",
        "all",
        "--report",
        s(&report),
    ]));
    assert!(stdout.contains("MR-2 door"), "{stdout}");
}

#[test]
fn run_and_synth() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut config: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(toy("config.json")).unwrap()).unwrap();
    for key in ["annotations", "detections"] {
        config["io"][key] = serde_json::json!(toy(&format!("{key}.json")));
    }
    config["SCF"]["Embeddings"] = serde_json::json!(toy("vocab.txt"));
    config["SCF"]["Features"] = serde_json::json!(toy("features.json"));
    config["SCF"]["hyper"] = serde_json::json!({"epochs": 10, "hidden_dim": 8});
    config["io"]["out_dir"] = serde_json::json!(d.join("out"));
    let cfg = d.join("config.json");
    std::fs::write(&cfg, config.to_string()).unwrap();
    let stdout = ok(&detctx(&["run", "--config", s(&cfg), "--seed", "1"]));
    assert!(stdout.contains("eval"));
    assert!(d.join("out/eval_report.json").is_file());

    let spec = d.join("spec.json");
    std::fs::write(
        &spec,
        serde_json::to_string(&detctx::synth::SceneSpec::door_stair(0)).unwrap(),
    )
    .unwrap();
    let (ann, det) = (d.join("ann.json"), d.join("det.json"));
    let stdout = ok(&detctx(&[
        "synth",
        "--spec",
        s(&spec),
        "--out-ann",
        s(&ann),
        "--out-det",
        s(&det),
    ]));
    assert_eq!(stdout.trim(), "2 annotations, 2 detections");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    // config error
    let cfg = d.join("empty.json");
    std::fs::write(&cfg, "{}").unwrap();
    let out = detctx(&["run", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no stage enabled"));

    // enlargement outside [0, 1)
    let out = detctx(&[
        "lcr-transform",
        "--annotations",
        s(&toy("annotations.json")),
        "--out",
        s(&d.join("x.json")),
        "--standard",
        "coco",
        "--enlarge",
        "1.5",
    ]);
    assert_eq!(out.status.code(), Some(2));

    // data error: dangling reference
    let bad = d.join("bad.json");
    std::fs::write(
        &bad,
        r#"{"images": [{"id": 1, "width": 10, "height": 10}], "categories": [{"id": 1, "name": "a"}],
            "annotations": [{"id": 1, "image_id": 1, "category_id": 9, "bbox": [0, 0, 2, 2]}]}"#,
    )
    .unwrap();
    let out = detctx(&[
        "lcr-transform",
        "--annotations",
        s(&bad),
        "--out",
        s(&d.join("x.json")),
        "--standard",
        "coco",
        "--enlarge",
        "0.1",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("category id 9"));

    // stage failure: nothing to derive a threshold from
    let rules = d.join("rules.json");
    std::fs::write(&rules, r#"[{"Subject": "knob", "Object": "stair", "t": "overlap"}]"#).unwrap();
    let out = detctx(&[
        "scr-derive",
        "--annotations",
        s(&toy("annotations.json")),
        "--rules",
        s(&rules),
        "--out",
        s(&d.join("r.json")),
    ]);
    assert_eq!(out.status.code(), Some(4));

    // unknown flag
    assert_eq!(detctx(&["evaluate", "--bogus"]).status.code(), Some(2));
}
