//! The iterative segmentation loop.
//!
//! After an initial over-segmentation, each iteration builds the region
//! adjacency graph, recomputes region colors and HOG descriptors, weights the
//! edges, detects communities and merges each community into one region. The
//! loop stops once an iteration leaves the pixel partition unchanged.

use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::community::{detect, AlgorithmKind, PottsParams};
use crate::error::{Error, Result};
use crate::features::{region_stats, HogExtractor, SimilarityParams};
use crate::imgio::{luminance, rgb_to_lab, LabelMap, RgbImage};
use crate::presegment::{meanshift_segment, superpixel_segment, MeanShiftParams, SuperpixelParams};
use crate::rag::{build_rag, merge_by_partition, weight_rag};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Initializer {
    Meanshift(MeanShiftParams),
    Superpixels(SuperpixelParams),
}

impl Default for Initializer {
    fn default() -> Self {
        Initializer::Meanshift(MeanShiftParams::default())
    }
}

impl Initializer {
    pub fn name(&self) -> &'static str {
        match self {
            Initializer::Meanshift(_) => "meanshift",
            Initializer::Superpixels(_) => "superpixels",
        }
    }

    /// Default parameters for an initializer name.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "meanshift" | "mean_shift" => Ok(Initializer::Meanshift(MeanShiftParams::default())),
            "superpixels" | "superpixel" => Ok(Initializer::Superpixels(SuperpixelParams::default())),
            _ => Err(Error::InvalidParameter(format!("unknown initializer {name:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub initializer: Initializer,
    pub similarity: SimilarityParams,
    pub algorithm: AlgorithmKind,
    pub potts: PottsParams,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            initializer: Initializer::default(),
            similarity: SimilarityParams::default(),
            algorithm: AlgorithmKind::Louvain,
            potts: PottsParams::default(),
            max_iterations: 50,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be at least 1".into()));
        }
        match &self.initializer {
            Initializer::Meanshift(p) => p.validate()?,
            Initializer::Superpixels(p) => p.validate()?,
        }
        self.similarity.validate()?;
        if self.algorithm == AlgorithmKind::Fmcdrn {
            self.potts.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    /// Regions entering the iteration.
    pub regions: usize,
    /// Communities found (regions leaving the iteration).
    pub communities: usize,
    pub modularity: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineTrace {
    pub initial_regions: usize,
    pub initializer_seconds: f64,
    pub iterations: Vec<IterationRecord>,
    /// False when `max_iterations` cut the loop short.
    pub converged: bool,
}

impl PipelineTrace {
    pub fn total_seconds(&self) -> f64 {
        self.initializer_seconds + self.iterations.iter().map(|r| r.seconds).sum::<f64>()
    }
}

/// True iff the two maps partition the pixels identically, whatever the label
/// values.
pub fn stopping_check(prev: &LabelMap, cur: &LabelMap) -> Result<bool> {
    if prev.dims() != cur.dims() {
        return Err(Error::dims(prev.dims(), cur.dims()));
    }
    let mut forward: HashMap<u32, u32> = HashMap::new();
    let mut backward: HashMap<u32, u32> = HashMap::new();
    for (&a, &b) in prev.labels().iter().zip(cur.labels()) {
        if *forward.entry(a).or_insert(b) != b || *backward.entry(b).or_insert(a) != a {
            return Ok(false);
        }
    }
    Ok(true)
}

fn iteration_seed(seed: u64, iteration: usize) -> u64 {
    seed.wrapping_add((iteration as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Runs the initializer alone.
pub fn initial_segmentation(img: &RgbImage, init: &Initializer) -> Result<LabelMap> {
    let lab = rgb_to_lab(img);
    match init {
        Initializer::Meanshift(p) => meanshift_segment(&lab, p),
        Initializer::Superpixels(p) => superpixel_segment(&lab, p),
    }
}

/// Segments `img`, returning the final compact label map and the per
/// iteration trace.
pub fn segment(img: &RgbImage, cfg: &PipelineConfig) -> Result<(LabelMap, PipelineTrace)> {
    cfg.validate()?;
    let start = Instant::now();
    let lab = rgb_to_lab(img);
    let gray = luminance(img);
    let wrap = |iteration: usize| move |e: Error| Error::Iteration { iteration, source: Box::new(e) };
    let mut labels = match &cfg.initializer {
        Initializer::Meanshift(p) => meanshift_segment(&lab, p),
        Initializer::Superpixels(p) => superpixel_segment(&lab, p),
    }
    .map_err(wrap(0))?;
    let mut trace = PipelineTrace {
        initial_regions: labels.region_count(),
        initializer_seconds: start.elapsed().as_secs_f64(),
        iterations: Vec::new(),
        converged: false,
    };

    for iteration in 1..=cfg.max_iterations {
        let t0 = Instant::now();
        let regions = labels.region_count();
        if regions <= 1 {
            trace.iterations.push(IterationRecord {
                regions,
                communities: regions,
                modularity: 0.0,
                seconds: t0.elapsed().as_secs_f64(),
            });
            trace.converged = true;
            break;
        }
        let step = || -> Result<(LabelMap, usize, f64)> {
            let rag = build_rag(&labels)?;
            let mut stats = region_stats(&lab, &labels)?;
            HogExtractor::new(&gray, &labels, &cfg.similarity)?.fill(&mut stats);
            let weighted = weight_rag(&rag, &stats, &cfg.similarity)?;
            let graph = weighted.to_graph(cfg.similarity.min_edge_weight);
            let found = detect(&graph, cfg.algorithm, &cfg.potts, iteration_seed(cfg.seed, iteration))?;
            let merged = merge_by_partition(&labels, &found.partition)?;
            Ok((merged, found.partition.count(), found.modularity))
        };
        let (merged, communities, modularity) = step().map_err(wrap(iteration))?;
        trace.iterations.push(IterationRecord {
            regions,
            communities,
            modularity,
            seconds: t0.elapsed().as_secs_f64(),
        });
        let unchanged = communities == regions || stopping_check(&labels, &merged)?;
        labels = merged;
        if unchanged {
            trace.converged = true;
            break;
        }
    }
    Ok((labels, trace))
}
