use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mapforge::assign::{point_set_cost, CostSpec};
use mapforge::eval::{evaluate, ApReport, EvalSpec, Prediction};
use mapforge::{ClassLabel, MapElement, PerceptionRange};
use mapforge_testkit as kit;
use rand::Rng;
use serde_json::{json, Value};

const BIN: &str = env!("CARGO_BIN_EXE_mapforge");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn lines(p: &Path) -> Vec<Value> {
    std::fs::read_to_string(p)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn write_lines(p: &Path, rows: &[Value]) {
    let text: String = rows.iter().map(|r| format!("{r}\n")).collect();
    std::fs::write(p, text).unwrap();
}

fn frame(scene: &str, frame: &str, elements: &[MapElement], preds: Option<&[Prediction]>) -> Value {
    let mut v = json!({
        "scene_id": scene,
        "frame_id": frame,
        "ego_pose": {"x": 0.0, "y": 0.0, "yaw": 0.0},
        "elements": elements,
    });
    if let Some(p) = preds {
        v["predictions"] = p
            .iter()
            .map(|p| json!({"element": p.element, "confidence": p.confidence()}))
            .collect();
    }
    v
}

fn synth(dir: &Path, frames: usize, mode: &str) -> PathBuf {
    let p = dir.join(format!("synth_{frames}_{mode}.jsonl"));
    ok(&["synth", "--output", s(&p), "--frames", &frames.to_string(), "--predictions", mode]);
    p
}

#[test]
fn zero_groups_give_empty_lists() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), 3, "none");
    let out = dir.path().join("n.jsonl");
    ok(&["gen-noise", "--input", s(&input), "--output", s(&out), "--groups", "0"]);
    let rows = lines(&out);
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r["groups"] == json!([])));
}

#[test]
fn identity_flags_reproduce_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), 4, "none");
    let out = dir.path().join("n.jsonl");
    ok(&[
        "gen-noise", "--input", s(&input), "--output", s(&out), "--groups", "2", "--rot-max-deg", "0",
        "--trans-max", "0", "--scale-min", "1", "--scale-max", "1", "--curv-min", "1", "--curv-max", "1",
    ]);
    for (scene, noised) in lines(&input).iter().zip(lines(&out)) {
        assert_eq!(scene["frame_id"], noised["frame_id"]);
        let gts: Vec<MapElement> = serde_json::from_value(scene["elements"].clone()).unwrap();
        for group in noised["groups"].as_array().unwrap() {
            for (item, gt) in group["items"].as_array().unwrap().iter().zip(&gts) {
                let e: MapElement = serde_json::from_value(item["noised"].clone()).unwrap();
                for (p, q) in e.points().iter().zip(gt.points()) {
                    assert!(p.distance(*q) <= 1e-9);
                }
            }
        }
    }
}

#[test]
fn malformed_line_is_reported_by_number() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), 2, "none");
    let mut text = std::fs::read_to_string(&input).unwrap();
    text.push_str("{\"scene_id\": \"x\", \"frame_id\": \"9\", \"ego_pose\": {\"x\": 0, \"y\": 0, \"yaw\": 0}, \"elements\": [{\"class\": \"divider\", \"points\": [[0, 0]]}]}\n");
    std::fs::write(&input, text).unwrap();
    let out = run(&["gen-noise", "--input", s(&input), "--output", s(&dir.path().join("o.jsonl"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn mask_files_have_exact_layout() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.jsonl");
    write_lines(&input, &[frame("a", "0", &[], None)]);
    let masks = dir.path().join("masks");
    ok(&["rasterize", "--input", s(&input), "--out-dir", s(&masks)]);
    let header: Value = serde_json::from_str(&std::fs::read_to_string(masks.join("a_0.json")).unwrap()).unwrap();
    assert_eq!((header["height"].as_u64(), header["width"].as_u64()), (Some(400), Some(200)));
    assert_eq!(header["classes"], json!(["ped_crossing", "divider", "boundary", "centerline"]));
    let bytes = std::fs::read(masks.join("a_0.bin")).unwrap();
    assert_eq!(bytes.len(), 4 * 400 * 200);
    assert!(bytes.iter().all(|&b| b == 0));

    let long = dir.path().join("long");
    ok(&["rasterize", "--input", s(&input), "--range", "-30,30,-45,45", "--out-dir", s(&long)]);
    let header: Value = serde_json::from_str(&std::fs::read_to_string(long.join("a_0.json")).unwrap()).unwrap();
    assert_eq!(header["range"], json!([-30.0, 30.0, -45.0, 45.0]));
    assert_eq!((header["height"].as_u64(), header["width"].as_u64()), (Some(600), Some(400)));
    assert_eq!(std::fs::read(long.join("a_0.bin")).unwrap().len(), 4 * 600 * 400);
}

#[test]
fn unwritable_output_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), 1, "none");
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, b"x").unwrap();
    let out = run(&["rasterize", "--input", s(&input), "--out-dir", s(&blocker.join("sub"))]);
    assert!(!out.status.success());
}

#[test]
fn eval_report_equals_library() {
    let dir = tempfile::tempdir().unwrap();
    let classes = [ClassLabel::PedCrossing, ClassLabel::Divider, ClassLabel::Boundary];
    let mut rng = kit::rng(7);
    for round in 0..5 {
        let mut gts = Vec::new();
        let mut preds = Vec::new();
        let mut rows = Vec::new();
        for f in 0..rng.random_range(1..5) {
            let (g, p) = kit::random_eval_scene(&mut rng, 5, 5, &classes);
            rows.push(frame("s", &f.to_string(), &g, Some(&p)));
            gts.push(g);
            preds.push(p);
        }
        let file = dir.path().join(format!("r{round}.jsonl"));
        write_lines(&file, &rows);
        let report = dir.path().join(format!("r{round}.json"));
        let stdout = ok(&["eval", "--gt", s(&file), "--pred", s(&file), "--points", "30", "--report", s(&report)]);
        let spec = EvalSpec {
            n_points: 30,
            ..EvalSpec::default()
        };
        let want = evaluate(&preds, &gts, &spec).unwrap();
        let got: ApReport = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
        assert_eq!(got, want);
        assert!(stdout.ends_with(&format!("mAP: {}\n", want.map_percent())), "{stdout}");
    }
}

#[test]
fn eval_lists_missing_frames() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt.jsonl");
    let pred = dir.path().join("pred.jsonl");
    write_lines(&gt, &[frame("s", "0", &[], None), frame("s", "1", &[], None), frame("t", "5", &[], None)]);
    write_lines(&pred, &[frame("s", "0", &[], Some(&[]))]);
    let out = run(&["eval", "--gt", s(&gt), "--pred", s(&pred)]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("s/1") && err.contains("t/5"), "{err}");
}

#[test]
fn matching_identical_sets_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = synth(dir.path(), 5, "copy");
    let out = dir.path().join("m.jsonl");
    ok(&["match", "--gt", s(&scenes), "--pred", s(&scenes), "--out", s(&out)]);
    let rows = lines(&out);
    assert_eq!(rows.len(), 5);
    for row in rows {
        for pair in row["pairs"].as_array().unwrap() {
            assert_eq!(pair["pred_index"], pair["gt_index"]);
            assert_eq!(pair["point_cost"], json!(0.0));
        }
        assert_eq!(row["unmatched_gts"], json!([]));
    }
}

#[test]
fn matching_equals_brute_force() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = kit::rng(8);
    let mut rows = Vec::new();
    let mut frames = Vec::new();
    for f in 0..20 {
        let ng = rng.random_range(0..=6);
        let np = rng.random_range(0..=6);
        let g: Vec<MapElement> = (0..ng).map(|_| kit::random_element(&mut rng, &PerceptionRange::BASE)).collect();
        let p: Vec<Prediction> = (0..np)
            .map(|_| Prediction::new(kit::random_element(&mut rng, &PerceptionRange::BASE), rng.random_range(0.0..1.0)).unwrap())
            .collect();
        rows.push(frame("m", &f.to_string(), &g, Some(&p)));
        frames.push((g, p));
    }
    let file = dir.path().join("f.jsonl");
    write_lines(&file, &rows);
    let out = dir.path().join("m.jsonl");
    ok(&["match", "--gt", s(&file), "--pred", s(&file), "--out", s(&out)]);
    let spec = CostSpec::default();
    for ((g, p), row) in frames.iter().zip(lines(&out)) {
        let costs: Vec<Vec<f64>> = p
            .iter()
            .map(|pred| {
                g.iter()
                    .map(|gt| {
                        let score = if pred.class() == gt.class() { pred.confidence() } else { 0.0 };
                        let (pc, _) = point_set_cost(&pred.element, gt, spec.n_points).unwrap();
                        -spec.w_cls * score + spec.w_pts * pc
                    })
                    .collect()
            })
            .collect();
        let (_, want) = kit::brute_force_assignment(&costs);
        let got: Vec<(usize, usize)> = row["pairs"]
            .as_array()
            .unwrap()
            .iter()
            .map(|p| (p["pred_index"].as_u64().unwrap() as usize, p["gt_index"].as_u64().unwrap() as usize))
            .collect();
        assert_eq!(got, want);
    }
}

#[test]
fn scene_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = synth(dir.path(), 6, "noisy");
    let parsed = lines(&scenes);
    let again: String = parsed.iter().map(|v| format!("{v}\n")).collect();
    let reparsed: Vec<Value> = again.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(reparsed, parsed);
    let copy = dir.path().join("copy.jsonl");
    let out = dir.path().join("n.jsonl");
    std::fs::write(&copy, &again).unwrap();
    ok(&["gen-noise", "--input", s(&copy), "--output", s(&out)]);
}

#[test]
fn bench_counts_are_stable() {
    let count = |suite: &str| -> String {
        let out = ok(&["bench", "--suite", suite, "--size", "6", "--seed", "3", "--repeats", "1"]);
        out.lines().find(|l| l.starts_with("suite:")).unwrap().to_string()
    };
    for suite in ["raster", "eval", "dfa"] {
        assert_eq!(count(suite), count(suite));
    }
}

#[test]
fn project_reports_every_element() {
    let out = ok(&["project", "--views", "6", "--levels", "2", "--channels", "4", "--seed", "2"]);
    let rows: Vec<Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(!rows.is_empty());
    for r in rows {
        assert_eq!(r["cls"].as_array().unwrap().len(), 4);
        assert!(r["visible_views"].as_u64().unwrap() >= 1);
    }
}

#[test]
fn bad_thread_count_is_rejected() {
    let out = Command::new(BIN)
        .args(["synth", "--output", "/dev/null", "--frames", "1"])
        .env("MAPFORGE_THREADS", "zero")
        .output()
        .unwrap();
    assert!(!out.status.success());
}
