use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ragseg::imgio::{save_png, write_label_map};
use ragseg::{LabelMap, RgbImage};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ragseg"));
    c.env("RAGSEG_THREADS", "2");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Two flat halves with a little deterministic jitter, plus a matching
/// ground truth. `split` is the column where the right half starts.
fn fixture(dir: &Path, id: &str, split: usize) -> (PathBuf, PathBuf) {
    let (w, h) = (40, 32);
    let img = RgbImage::from_fn(w, h, |x, y| {
        let j = ((x * 7 + y * 13) % 5) as u8;
        if x < split {
            [200 + j, 40, 40]
        } else {
            [30, 60 + j, 200]
        }
    });
    let image = dir.join(format!("{id}.png"));
    save_png(&img, &image).unwrap();
    let gt = dir.join(format!("{id}.gt1.txt"));
    write_label_map(&LabelMap::from_fn(w, h, |x, _| (x >= split) as u32), &gt).unwrap();
    (image, gt)
}

struct Setup {
    _tmp: tempfile::TempDir,
    images: PathBuf,
    gts: PathBuf,
    out: PathBuf,
}

fn setup(n: usize) -> Setup {
    let tmp = tempfile::tempdir().unwrap();
    let images = tmp.path().join("images");
    let gts = tmp.path().join("gt");
    std::fs::create_dir_all(&images).unwrap();
    std::fs::create_dir_all(&gts).unwrap();
    for k in 0..n {
        let (image, gt) = fixture(&images, &format!("img{k}"), 14 + 4 * k);
        std::fs::rename(&gt, gts.join(gt.file_name().unwrap())).unwrap();
        assert!(image.exists());
    }
    let out = tmp.path().join("out");
    Setup { _tmp: tmp, images, gts, out }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn single_image_with_ground_truth() {
    let t = setup(1);
    let image = t.images.join("img0.png");
    let o = run(&["--input", s(&image), "--gt-dir", s(&t.gts), "--out", s(&t.out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for suffix in ["labels.png", "labels.txt", "overlay.png", "trace.json"] {
        assert!(t.out.join(format!("img0.{suffix}")).is_file(), "missing {suffix}");
    }
    let rows = read_csv(&t.out.join("metrics.csv"));
    assert_eq!(rows[0], ["image", "algorithm", "pri", "voi", "precision", "recall", "f_measure", "iterations", "seconds"]);
    assert_eq!(rows.len(), 2);
    let row = &rows[1];
    assert_eq!(&row[..2], ["img0", "louvain"]);
    let numeric: Vec<f64> = row[2..].iter().map(|v| v.parse().unwrap()).collect();
    assert_eq!(numeric.len(), 7);
    assert_eq!(numeric[0], 1.0, "PRI of a clean two-region image");
    assert_eq!(numeric[4], 1.0, "F of a clean two-region image");
    assert!(row[2..7].iter().all(|v| v.split('.').nth(1).is_some_and(|d| d.len() == 3)));

    let labels = ragseg::imgio::read_label_map(t.out.join("img0.labels.png")).unwrap();
    assert_eq!(labels, ragseg::imgio::read_label_map(t.out.join("img0.labels.txt")).unwrap());
    assert_eq!(labels.region_count(), 2);
    let trace: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(t.out.join("img0.trace.json")).unwrap()).unwrap();
    assert_eq!(trace["regions"], 2);
    assert!(trace["trace"]["iterations"].as_array().is_some_and(|a| !a.is_empty()));
}

#[test]
fn without_ground_truth_metrics_are_omitted() {
    let t = setup(2);
    let o = run(&["--input", s(&t.images), "--out", s(&t.out), "--dump-rag"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(t.out.join("img1.labels.png").is_file());
    assert!(t.out.join("img1.rag.txt").is_file());
    assert!(!t.out.join("metrics.csv").exists());
}

#[test]
fn unwritable_output_exits_with_two() {
    let t = setup(1);
    let blocker = t.out.with_file_name("blocker");
    std::fs::write(&blocker, b"not a directory").unwrap();
    let out = blocker.join("sub");
    let o = run(&["--input", s(&t.images), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains(s(&out)), "error names the path: {}", stderr(&o));
}

#[test]
fn missing_input_names_the_path() {
    let t = setup(0);
    let missing = t.images.join("nope.png");
    let o = run(&["--input", s(&missing), "--out", s(&t.out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.png"));
}

#[test]
fn empty_input_is_an_error() {
    let t = setup(0);
    let o = run(&["--input", s(&t.images), "--gt-dir", s(&t.gts), "--out", s(&t.out), "--sweep", "a=0,1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no input images"));
    assert!(!t.out.exists(), "nothing runs before the error");
}

#[test]
fn bad_config_is_rejected() {
    let t = setup(1);
    let cfg = t.out.with_file_name("cfg.toml");
    std::fs::write(&cfg, "[similarity]\na = 3.0\n").unwrap();
    let o = run(&["--input", s(&t.images), "--out", s(&t.out), "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["--input", s(&t.images), "--out", s(&t.out), "--sweep", "a=0,1"]);
    assert_eq!(o.status.code(), Some(1), "sweep without ground truth");
}

#[test]
fn config_file_is_applied() {
    let t = setup(1);
    let cfg = t.out.with_file_name("cfg.toml");
    std::fs::write(&cfg, "algorithm = \"infomap\"\nmax_iterations = 3\n[initializer]\nkind = \"superpixels\"\ntarget_regions = 20\n").unwrap();
    let o = run(&["--input", s(&t.images), "--gt-dir", s(&t.gts), "--out", s(&t.out), "--config", s(&cfg)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let trace: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(t.out.join("img0.trace.json")).unwrap()).unwrap();
    assert_eq!(trace["config"]["algorithm"], "infomap");
    assert_eq!(trace["config"]["initializer"]["kind"], "superpixels");
    assert!(trace["trace"]["iterations"].as_array().unwrap().len() <= 3);
    assert_eq!(read_csv(&t.out.join("metrics.csv"))[1][1], "infomap");
}

fn sweep(t: &Setup, spec: &str) -> (Vec<Vec<String>>, Vec<Vec<String>>) {
    let o = run(&["--input", s(&t.images), "--gt-dir", s(&t.gts), "--out", s(&t.out), "--sweep", spec]);
    assert!(o.status.success(), "{}", stderr(&o));
    (read_csv(&t.out.join("sweep_detail.csv")), read_csv(&t.out.join("sweep_summary.csv")))
}

#[test]
fn sweep_over_a() {
    let t = setup(2);
    let (detail, summary) = sweep(&t, "a=0,0.2,0.4,0.6,0.8,1.0");
    assert_eq!(summary[0], ["config", "images", "pri", "voi", "precision", "recall", "f_measure", "running_time"]);
    assert_eq!(summary.len(), 7);
    assert_eq!(detail.len(), 1 + 12);
    let configs: Vec<&str> = summary[1..].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(configs, ["a=0", "a=0.2", "a=0.4", "a=0.6", "a=0.8", "a=1.0"]);
    // summary means are recomputable from the detail rows
    for row in &summary[1..] {
        let mine: Vec<&Vec<String>> = detail[1..].iter().filter(|d| d[0] == row[0]).collect();
        assert_eq!(row[1], mine.len().to_string());
        for (col, name) in [(2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (7, 9)] {
            let mean = mine.iter().map(|d| d[name].parse::<f64>().unwrap()).sum::<f64>() / mine.len() as f64;
            assert_eq!(row[col], format!("{mean:.3}"), "{} column {col}", row[0]);
        }
    }
}

#[test]
fn sweep_over_algorithms() {
    let t = setup(2);
    let (detail, summary) = sweep(&t, "algorithm=louvain,fast_greedy,infomap,fmcdrn");
    assert_eq!(summary.len(), 5);
    assert_eq!(detail.len(), 1 + 8);
    for (row, name) in summary[1..].iter().zip(["louvain", "fast_greedy", "infomap", "fmcdrn"]) {
        assert_eq!(row[0], format!("algorithm={name}"));
        assert_eq!(row[2], "1.000", "PRI of {name}");
    }
    assert!(detail[1..].iter().all(|d| d[10].is_empty()));
}

#[test]
fn sweep_records_failures_and_continues() {
    let t = setup(2);
    std::fs::write(t.gts.join("img1.gt1.txt"), "not a label map").unwrap();
    let o = run(&["--input", s(&t.images), "--gt-dir", s(&t.gts), "--out", s(&t.out), "--sweep", "a=0,1"]);
    assert_eq!(o.status.code(), Some(1));
    let detail = read_csv(&t.out.join("sweep_detail.csv"));
    assert_eq!(detail.len(), 5);
    assert!(detail.iter().filter(|d| d[1] == "img1").all(|d| !d[10].is_empty()));
    let summary = read_csv(&t.out.join("sweep_summary.csv"));
    assert!(summary[1..].iter().all(|r| r[1] == "1"));
}

#[test]
fn sweep_rejects_invalid_values() {
    let t = setup(1);
    let o = run(&["--input", s(&t.images), "--gt-dir", s(&t.gts), "--out", s(&t.out), "--sweep", "a=0,7"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!t.out.join("sweep_detail.csv").exists());
}

/// Drops the timing columns, which legitimately differ between runs.
fn without_timing(rows: Vec<Vec<String>>, timing: &[usize]) -> Vec<Vec<String>> {
    rows.into_iter()
        .map(|r| r.into_iter().enumerate().filter(|(i, _)| !timing.contains(i)).map(|(_, v)| v).collect())
        .collect()
}

#[test]
fn reruns_reproduce_outputs() {
    let t = setup(3);
    let args = |out: &Path| {
        vec![
            "--input".to_string(),
            s(&t.images).to_string(),
            "--gt-dir".to_string(),
            s(&t.gts).to_string(),
            "--out".to_string(),
            s(out).to_string(),
            "--algorithm".to_string(),
            "fmcdrn".to_string(),
            "--seed".to_string(),
            "17".to_string(),
        ]
    };
    let second = t.out.with_file_name("out2");
    for out in [&t.out, &second] {
        let o = bin().args(args(out)).output().unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = without_timing(read_csv(&t.out.join("metrics.csv")), &[8]);
    let b = without_timing(read_csv(&second.join("metrics.csv")), &[8]);
    assert_eq!(a, b);
    for k in 0..3 {
        for suffix in ["labels.png", "labels.txt", "overlay.png"] {
            let name = format!("img{k}.{suffix}");
            assert_eq!(std::fs::read(t.out.join(&name)).unwrap(), std::fs::read(second.join(&name)).unwrap(), "{name}");
        }
    }

    let single = t.out.with_file_name("out1");
    let mut one_thread = bin();
    one_thread.env("RAGSEG_THREADS", "1").args(args(&single));
    assert!(one_thread.output().unwrap().status.success());
    assert_eq!(without_timing(read_csv(&single.join("metrics.csv")), &[8]), a, "thread count does not change results");
}

#[test]
fn manifest_mismatch_is_reported() {
    let t = setup(1);
    std::fs::write(t.gts.join("manifest.json"), r#"{"images": [{"id": "img0", "annotators": 5}]}"#).unwrap();
    let o = run(&["--input", s(&t.images), "--gt-dir", s(&t.gts), "--out", s(&t.out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("5 annotators"));
}
