//! Per-image work and CSV reports.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ragseg::eval::{evaluate, MetricReport};
use ragseg::features::{region_stats, HogExtractor};
use ragseg::imgio::{load_image, luminance, overlay_boundaries, read_label_map, rgb_to_lab, save_png, write_label_map};
use ragseg::pipeline::{segment, PipelineConfig, PipelineTrace};
use ragseg::rag::{build_rag, weight_rag};
use ragseg::LabelMap;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const METRICS_HEADER: [&str; 9] = ["image", "algorithm", "pri", "voi", "precision", "recall", "f_measure", "iterations", "seconds"];
pub const DETAIL_HEADER: [&str; 11] =
    ["config", "image", "algorithm", "pri", "voi", "precision", "recall", "f_measure", "iterations", "seconds", "error"];
pub const SUMMARY_HEADER: [&str; 8] = ["config", "images", "pri", "voi", "precision", "recall", "f_measure", "running_time"];

#[derive(Debug, Clone)]
pub struct ImageJob {
    pub path: PathBuf,
    pub id: String,
    pub ground_truths: Vec<PathBuf>,
}

#[derive(Debug)]
pub struct Outcome {
    pub id: String,
    pub algorithm: &'static str,
    pub metrics: Option<MetricReport>,
    pub iterations: usize,
    pub seconds: f64,
}

/// Per-image seed: the first 8 bytes of SHA-256 over the global seed and the
/// image path as given.
pub fn image_seed(global: u64, path: &Path) -> u64 {
    let mut h = Sha256::new();
    h.update(global.to_le_bytes());
    h.update(path.to_string_lossy().as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

#[derive(Serialize)]
struct TraceFile<'a> {
    image: &'a str,
    seed: u64,
    regions: usize,
    config: &'a PipelineConfig,
    trace: &'a PipelineTrace,
}

/// Where per-image artifacts go, if anywhere.
#[derive(Debug, Clone, Copy)]
pub struct Artifacts<'a> {
    pub dir: &'a Path,
    pub dump_rag: bool,
}

pub fn process(job: &ImageJob, cfg: &RunConfig, artifacts: Option<Artifacts>) -> Result<Outcome> {
    let img = load_image(&job.path)?;
    let mut pipeline = cfg.pipeline.clone();
    pipeline.seed = image_seed(cfg.pipeline.seed, &job.path);
    let (labels, trace) = segment(&img, &pipeline).with_context(|| format!("segmenting {}", job.path.display()))?;

    let metrics = if job.ground_truths.is_empty() {
        None
    } else {
        let gts = job.ground_truths.iter().map(read_label_map).collect::<ragseg::Result<Vec<LabelMap>>>()?;
        let report = evaluate(&labels, &gts, cfg.eval.tol, cfg.eval.boundary_mode)
            .with_context(|| format!("scoring {}", job.path.display()))?;
        Some(report)
    };

    if let Some(a) = artifacts {
        let base = |suffix: &str| a.dir.join(format!("{}.{suffix}", job.id));
        write_label_map(&labels, base("labels.png"))?;
        write_label_map(&labels, base("labels.txt"))?;
        save_png(&overlay_boundaries(&img, &labels)?, base("overlay.png"))?;
        let trace_file = TraceFile {
            image: &job.id,
            seed: pipeline.seed,
            regions: labels.region_count(),
            config: &pipeline,
            trace: &trace,
        };
        let path = base("trace.json");
        let json = serde_json::to_string_pretty(&trace_file)?;
        std::fs::write(&path, json + "\n").with_context(|| format!("cannot write {}", path.display()))?;
        if a.dump_rag {
            let rag = build_rag(&labels)?;
            let mut stats = region_stats(&rgb_to_lab(&img), &labels)?;
            let gray = luminance(&img);
            HogExtractor::new(&gray, &labels, &pipeline.similarity)?.fill(&mut stats);
            weight_rag(&rag, &stats, &pipeline.similarity)?.write_edge_list(base("rag.txt"))?;
        }
    }

    Ok(Outcome {
        id: job.id.clone(),
        algorithm: pipeline.algorithm.name(),
        metrics,
        iterations: trace.iterations.len(),
        seconds: trace.total_seconds(),
    })
}

pub fn fmt3(x: f64) -> String {
    format!("{x:.3}")
}

fn round3(x: f64) -> f64 {
    fmt3(x).parse().expect("formatted float parses")
}

fn metric_fields(m: &MetricReport) -> [String; 5] {
    [m.pri, m.voi, m.precision, m.recall, m.f_measure].map(fmt3)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))
}

fn finish(mut w: csv::Writer<std::fs::File>, path: &Path) -> Result<()> {
    w.flush().with_context(|| format!("cannot write {}", path.display()))
}

/// One row per scored image, in input order.
pub fn write_metrics(path: &Path, outcomes: &[&Outcome]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let ctx = || format!("cannot write {}", path.display());
    w.write_record(METRICS_HEADER).with_context(ctx)?;
    for o in outcomes {
        let Some(m) = &o.metrics else { continue };
        let mut row = vec![o.id.clone(), o.algorithm.to_string()];
        row.extend(metric_fields(m));
        row.push(o.iterations.to_string());
        row.push(fmt3(o.seconds));
        w.write_record(&row).with_context(ctx)?;
    }
    finish(w, path)
}

pub struct SweepRow {
    pub config: String,
    pub id: String,
    pub outcome: std::result::Result<Outcome, String>,
}

/// Writes the per-image detail table and the per-configuration summary.
/// Summary means are taken over the rounded detail values of successful
/// rows, so they can be recomputed from the detail file.
pub fn write_sweep(detail: &Path, summary: &Path, configs: &[String], rows: &[SweepRow]) -> Result<()> {
    let mut w = csv_writer(detail)?;
    let ctx = || format!("cannot write {}", detail.display());
    w.write_record(DETAIL_HEADER).with_context(ctx)?;
    for r in rows {
        let row: Vec<String> = match &r.outcome {
            Ok(o) => {
                let m = o.metrics.as_ref().expect("sweep rows are scored");
                let mut row = vec![r.config.clone(), r.id.clone(), o.algorithm.to_string()];
                row.extend(metric_fields(m));
                row.extend([o.iterations.to_string(), fmt3(o.seconds), String::new()]);
                row
            }
            Err(e) => {
                let mut row = vec![r.config.clone(), r.id.clone()];
                row.extend(std::iter::repeat_n(String::new(), 8));
                row.push(e.clone());
                row
            }
        };
        w.write_record(&row).with_context(ctx)?;
    }
    finish(w, detail)?;

    let mut w = csv_writer(summary)?;
    let ctx = || format!("cannot write {}", summary.display());
    w.write_record(SUMMARY_HEADER).with_context(ctx)?;
    for config in configs {
        let ok: Vec<&Outcome> = rows.iter().filter(|r| &r.config == config).filter_map(|r| r.outcome.as_ref().ok()).collect();
        let mut row = vec![config.clone(), ok.len().to_string()];
        if ok.is_empty() {
            row.extend(std::iter::repeat_n(String::new(), 6));
        } else {
            let mut sums = [0.0f64; 6];
            for o in &ok {
                let m = o.metrics.as_ref().expect("sweep rows are scored");
                let vals = [m.pri, m.voi, m.precision, m.recall, m.f_measure, o.seconds];
                sums.iter_mut().zip(vals).for_each(|(s, v)| *s += round3(v));
            }
            row.extend(sums.map(|s| fmt3(s / ok.len() as f64)));
        }
        w.write_record(&row).with_context(ctx)?;
    }
    finish(w, summary)
}

/// Fails early, naming the path, if `dir` cannot hold output files.
pub fn ensure_writable(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let probe = dir.join(".ragseg-write-test");
    std::fs::File::create(&probe)
        .and_then(|mut f| f.write_all(b"ok"))
        .with_context(|| format!("cannot write to output directory {}", dir.display()))?;
    std::fs::remove_file(&probe).with_context(|| format!("cannot write to output directory {}", dir.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_depend_on_both_inputs() {
        let a = image_seed(0, Path::new("img/a.png"));
        assert_eq!(a, image_seed(0, Path::new("img/a.png")));
        assert_ne!(a, image_seed(1, Path::new("img/a.png")));
        assert_ne!(a, image_seed(0, Path::new("img/b.png")));
    }

    #[test]
    fn three_decimals() {
        assert_eq!(fmt3(0.69460), "0.695");
        assert_eq!(fmt3(1.0), "1.000");
        assert_eq!(round3(0.12345), 0.123);
    }
}
