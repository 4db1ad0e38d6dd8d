use std::path::{Path, PathBuf};
use std::process::Command;

use gmaiou_core::assign::{assign_atss_with, generate_anchors, AnchorConfig, LabelCounts};
use gmaiou_core::cli::{run, EXIT_CHECK_FAILED, EXIT_INVALID, EXIT_OK};
use gmaiou_core::ingest::load_annotations;
use gmaiou_core::oracle::BruteGmaIou;
use gmaiou_core::GmaMode;
use serde_json::{json, Value};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn s(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

fn counts_json(c: &LabelCounts) -> Value {
    json!({"positive": c.positive, "negative": c.negative, "ignore": c.ignore})
}

/// Per-image and total ATSS(k = 9, P = M) counts computed through the
/// brute-force proximity.
fn oracle_golden() -> Value {
    let file = load_annotations(fixture("two_images.json")).unwrap();
    let anchors = AnchorConfig::atss_550();
    let mut total = LabelCounts::default();
    let mut images = Vec::new();
    for img in file.dataset_images().unwrap() {
        let grid = generate_anchors(img.width, img.height, &anchors).unwrap();
        let (r, _) = assign_atss_with(&grid, &img.ground_truths, 9, &BruteGmaIou(GmaMode::PolyIsMask));
        let c = r.counts();
        total.add(&c);
        images.push(json!({"image_id": img.id, "summary": counts_json(&c)}));
    }
    json!({"images": images, "summary": counts_json(&total)})
}

#[test]
fn atss_golden_summary() {
    let golden_path = fixture("golden_atss_gmaiou_m.json");
    let oracle = oracle_golden();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&golden_path, serde_json::to_string_pretty(&oracle).unwrap()).unwrap();
    }
    let golden: Value = serde_json::from_str(&std::fs::read_to_string(&golden_path).unwrap()).unwrap();
    assert_eq!(oracle, golden);

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("assign.json");
    let code = run([
        "gmaiou",
        "assign",
        "--annotations",
        &s(&fixture("two_images.json")),
        "--assigner",
        "atss",
        "--measure",
        "gmaiou-m",
        "--k",
        "9",
        "--output",
        &s(&out),
    ]);
    assert_eq!(code, EXIT_OK);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["summary"], golden["summary"]);
    for (img, g) in report["images"].as_array().unwrap().iter().zip(golden["images"].as_array().unwrap()) {
        assert_eq!(img["image_id"], g["image_id"]);
        assert_eq!(img["summary"], g["summary"]);
    }
    assert!(golden["summary"]["positive"].as_u64().unwrap() > 0);
    assert_eq!(golden["summary"]["ignore"], 0);
}

#[test]
fn assign_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let outputs: Vec<String> = ["1", "4"]
        .iter()
        .map(|threads| {
            let out = dir.path().join(format!("a{threads}.json"));
            let code = run([
                "gmaiou",
                "--threads",
                threads,
                "assign",
                "--annotations",
                &s(&fixture("two_images.json")),
                "--assigner",
                "fixed",
                "--measure",
                "iou",
                "--output",
                &s(&out),
            ]);
            assert_eq!(code, EXIT_OK);
            std::fs::read_to_string(out).unwrap()
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn fixed_assigner_uses_yolact_convention() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fixed.json");
    let code = run([
        "gmaiou",
        "assign",
        "--annotations",
        &s(&fixture("two_images.json")),
        "--assigner",
        "fixed",
        "--pos-thr",
        "0.5",
        "--neg-thr",
        "0.4",
        "--measure",
        "iou",
        "--output",
        &s(&out),
    ]);
    assert_eq!(code, EXIT_OK);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["anchor_config"], "yolact-550");
    for img in report["images"].as_array().unwrap() {
        let anchors = img["anchors"].as_array().unwrap();
        for a in anchors {
            let score = a["score"].as_f64().unwrap();
            let expected = if score >= 0.5 {
                "positive"
            } else if score < 0.4 {
                "negative"
            } else {
                "ignore"
            };
            assert_eq!(a["label"], expected);
            assert_eq!(a.get("gt_index").is_some(), expected == "positive");
        }
        let n = img["summary"]["positive"].as_u64().unwrap()
            + img["summary"]["negative"].as_u64().unwrap()
            + img["summary"]["ignore"].as_u64().unwrap();
        assert_eq!(n as usize, anchors.len());
    }
}

#[test]
fn invalid_thresholds_and_inputs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(&dir.path().join("x.json"));
    let ann = s(&fixture("two_images.json"));
    let base = ["gmaiou", "assign", "--annotations", &ann, "--assigner", "fixed", "--output", &out];
    let with = |extra: &[&str]| {
        let mut v: Vec<&str> = base.to_vec();
        v.extend_from_slice(extra);
        run(v)
    };
    assert_eq!(with(&["--measure", "iou", "--neg-thr", "0.6", "--pos-thr", "0.5"]), EXIT_INVALID);
    assert_eq!(with(&["--measure", "ciou"]), EXIT_INVALID);
    assert_eq!(with(&["--measure", "iou", "--anchor-config", "nope"]), EXIT_INVALID);
    assert!(!dir.path().join("x.json").exists());

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"images\": [").unwrap();
    assert_eq!(
        run(["gmaiou", "stats", "--annotations", &s(&bad), "--output", &out]),
        EXIT_INVALID
    );
    assert_eq!(
        run(["gmaiou", "stats", "--annotations", "/no/such/file.json", "--output", &out]),
        EXIT_INVALID
    );
}

#[test]
fn custom_anchor_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("anchors.json");
    std::fs::write(&cfg, r#"{"levels": [{"stride": 16, "scales": [32], "aspect_ratios": [1.0]}]}"#).unwrap();
    let out = dir.path().join("a.json");
    let code = run([
        "gmaiou",
        "assign",
        "--annotations",
        &s(&fixture("two_images.json")),
        "--assigner",
        "atss",
        "--measure",
        "gmaiou-b",
        "--anchor-config",
        &s(&cfg),
        "--output",
        &s(&out),
    ]);
    assert_eq!(code, EXIT_OK);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    // 96x96 -> 6x6 cells, 128x80 -> 8x5 cells
    assert_eq!(report["images"][0]["anchors"].as_array().unwrap().len(), 36);
    assert_eq!(report["images"][1]["anchors"].as_array().unwrap().len(), 40);
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn stats_filled_boxes_land_in_top_bin() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mob.csv");
    let code = run([
        "gmaiou",
        "stats",
        "--annotations",
        &s(&fixture("filled_boxes.json")),
        "--output",
        &s(&out),
    ]);
    assert_eq!(code, EXIT_OK);
    let rows = read_csv(&out);
    assert_eq!(rows[0], ["bin_lo", "bin_hi", "count", "cumulative_fraction"]);
    assert_eq!(rows.len(), 21);
    assert_eq!(rows[20][2], "3");
    assert!(rows[1..20].iter().all(|r| r[2] == "0"));
    assert_eq!(rows[20][3], "1.000000");
}

#[test]
fn stats_half_filled_instance() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mob.csv");
    let args = |bins: &str| {
        vec![
            "gmaiou".to_string(),
            "stats".into(),
            "--annotations".into(),
            s(&fixture("mob_mix.json")),
            "--bins".into(),
            bins.into(),
            "--output".into(),
            s(&out),
        ]
    };
    assert_eq!(run(args("20")), EXIT_OK);
    let rows = read_csv(&out);
    // bin [0.5, 0.55) holds the half-filled instance, the two rectangles are full
    assert_eq!(rows[11][0], "0.500000");
    assert_eq!(rows[11][2], "1");
    assert_eq!(rows[20][2], "2");
    let total: u64 = rows[1..].iter().map(|r| r[2].parse::<u64>().unwrap()).sum();
    assert_eq!(total, 3);

    assert_eq!(run(args("1")), EXIT_OK);
    let rows = read_csv(&out);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1][2], "3");

    assert_eq!(run(args("0")), EXIT_INVALID);
}

#[test]
fn hist2d_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("h.csv");
    let hist = |ann: &str, x: &str, y: &str| {
        run([
            "gmaiou",
            "hist2d",
            "--annotations",
            &s(&fixture(ann)),
            "--measure-x",
            x,
            "--measure-y",
            y,
            "--bins",
            "10",
            "--output",
            &s(&out),
        ])
    };

    assert_eq!(hist("two_images.json", "gmaiou-m", "gmaiou-m"), EXIT_OK);
    let rows = read_csv(&out);
    assert_eq!(rows[0], ["x_bin", "y_bin", "x_lo", "x_hi", "y_lo", "y_hi", "count"]);
    assert!(rows[1..].iter().all(|r| r[0] == r[1]));
    let total: u64 = rows[1..].iter().map(|r| r[6].parse::<u64>().unwrap()).sum();
    // yolact-550 layout: 96x96 -> 3*(12^2+6^2+3^2+2^2+1) anchors x 3 instances,
    // 128x80 -> 3*(16*10+8*5+4*3+2*2+1*1) anchors x 2 instances
    assert_eq!(total, 3 * (144 + 36 + 9 + 4 + 1) * 3 + 3 * (160 + 40 + 12 + 4 + 1) * 2);

    assert_eq!(hist("thin_diagonal.json", "iou", "gmaiou-b"), EXIT_OK);
    let rows = read_csv(&out);
    let low_x_high_y: u64 = rows[1..]
        .iter()
        .filter(|r| r[0].parse::<usize>().unwrap() < 5 && r[1].parse::<usize>().unwrap() >= 5)
        .map(|r| r[6].parse::<u64>().unwrap())
        .sum();
    assert!(low_x_high_y > 0);

    assert_eq!(hist("empty.json", "iou", "gmaiou-b"), EXIT_OK);
    assert_eq!(read_csv(&out).len(), 1);

    assert_eq!(hist("empty.json", "giou", "iou"), EXIT_INVALID);
}

#[test]
fn check_random_trials_pass() {
    assert_eq!(run(["gmaiou", "check", "--random-trials", "1000", "--seed", "7"]), EXIT_OK);
    assert_eq!(run(["gmaiou", "check", "--random-trials", "0"]), EXIT_INVALID);
}

#[test]
fn check_annotations_pass_and_corruption_fails() {
    let ann = s(&fixture("two_images.json"));
    assert_eq!(run(["gmaiou", "check", "--annotations", &ann]), EXIT_OK);
    assert_eq!(
        run(["gmaiou", "check", "--annotations", &ann, "--corrupt-integral"]),
        EXIT_CHECK_FAILED
    );
    assert_eq!(
        run(["gmaiou", "check", "--random-trials", "50", "--corrupt-integral"]),
        EXIT_CHECK_FAILED
    );
}

#[test]
fn bench_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.json");
    let code = run([
        "gmaiou",
        "bench",
        "--anchors",
        "200",
        "--gts",
        "3",
        "--mask-size",
        "64",
        "--repeats",
        "1",
        "--output",
        &s(&out),
    ]);
    assert_eq!(code, EXIT_OK);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["brute_ns"].as_array().unwrap().len(), 1);
    assert!(report["speedup"].as_f64().unwrap() > 0.0);
    assert_eq!(run(["gmaiou", "bench", "--anchors", "0"]), EXIT_INVALID);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_gmaiou");
    let status = |args: &[&str]| Command::new(bin).args(args).output().unwrap().status.code();
    assert_eq!(status(&["check", "--random-trials", "20", "--seed", "3"]), Some(0));
    assert_eq!(status(&["check", "--random-trials", "20", "--corrupt-integral"]), Some(2));
    assert_eq!(status(&["assign", "--assigner", "bogus"]), Some(1));
    assert_eq!(status(&["--help"]), Some(0));
}

#[test]
fn inputs_are_not_modified() {
    let path = fixture("two_images.json");
    let before = std::fs::read(&path).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.csv");
    assert_eq!(run(["gmaiou", "stats", "--annotations", &s(&path), "--output", &s(&out)]), EXIT_OK);
    assert_eq!(std::fs::read(&path).unwrap(), before);
}
