//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for invalid flags or unreadable/invalid input,
//! 2 when `check` finds a violation.
//!
//! Output schemas:
//!
//! * `assign` writes JSON: `{"assigner", "measure", "anchor_config", "images":
//!   [{"image_id", "width", "height", "anchors": [{"label", "gt_index"?,
//!   "score"}], "summary"}], "summary": {"positive", "negative", "ignore"}}`.
//! * `stats` writes CSV `bin_lo,bin_hi,count,cumulative_fraction`.
//! * `hist2d` writes CSV `x_bin,y_bin,x_lo,x_hi,y_lo,y_hi,count`, one row per
//!   non-empty cell.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::assign::{
    assign_atss, assign_fixed, generate_anchors, AnchorConfig, AssignmentResult, AtssConfig,
    FixedThresholdConfig, Label, LabelCounts,
};
use crate::gmaiou::{bin_index, check_hist_measure, Histogram2d};
use crate::ingest::{load_annotations, AnnotationFile, DatasetImage};
use crate::measure::Measure;
use crate::oracle::{audit_pair, benchmark_pairing, random_anchor, random_instance, Violation};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_CHECK_FAILED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "gmaiou", version, about = "Mask-aware anchor proximity and assignment tools")]
pub struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Label every anchor of every image as positive, negative or ignored.
    Assign(AssignArgs),
    /// Histogram of mask-over-box ratios of the ground truths (CSV).
    Stats(StatsArgs),
    /// Joint histogram of two measures over all anchor/instance pairs (CSV).
    Hist2d(Hist2dArgs),
    /// Audit the integral-image path against brute force.
    Check(CheckArgs),
    /// Time brute-force against integral-image GmaIoU.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AssignerKind {
    Fixed,
    Atss,
}

fn parse_measure(s: &str) -> Result<Measure, String> {
    s.parse().map_err(|e: crate::Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct AssignArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long, value_enum)]
    pub assigner: AssignerKind,
    /// iou, giou, diou, gmaiou-b or gmaiou-m.
    #[arg(long, value_parser = parse_measure)]
    pub measure: Measure,
    /// ATSS candidates per pyramid level.
    #[arg(long, default_value_t = 9)]
    pub k: usize,
    #[arg(long, default_value_t = 0.5)]
    pub pos_thr: f64,
    #[arg(long, default_value_t = 0.4)]
    pub neg_thr: f64,
    /// Preset (yolact-550, atss-550) or JSON file; defaults to yolact-550 for
    /// the fixed assigner and atss-550 for ATSS.
    #[arg(long)]
    pub anchor_config: Option<String>,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct Hist2dArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long, value_parser = parse_measure)]
    pub measure_x: Measure,
    #[arg(long, value_parser = parse_measure)]
    pub measure_y: Measure,
    #[arg(long, default_value_t = 25)]
    pub bins: usize,
    #[arg(long, default_value = "yolact-550")]
    pub anchor_config: String,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["annotations", "random_trials"])))]
pub struct CheckArgs {
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long)]
    pub random_trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest frame side for random trials.
    #[arg(long, default_value_t = 128)]
    pub max_side: u32,
    #[arg(long, default_value = "atss-550")]
    pub anchor_config: String,
    /// Evenly spaced subsample of anchor/instance pairs per image.
    #[arg(long, default_value_t = 2000)]
    pub max_pairs_per_image: usize,
    #[arg(long, hide = true)]
    pub corrupt_integral: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 10_000)]
    pub anchors: usize,
    #[arg(long, default_value_t = 50)]
    pub gts: usize,
    #[arg(long, default_value_t = 128)]
    pub mask_size: u32,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the JSON report here.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_INVALID
        }
    }
}

pub fn execute(cli: Cli) -> anyhow::Result<i32> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("building worker pool")?;
    pool.install(|| match cli.command {
        Command::Assign(a) => cmd_assign(&a),
        Command::Stats(a) => cmd_stats(&a),
        Command::Hist2d(a) => cmd_hist2d(&a),
        Command::Check(a) => cmd_check(&a),
        Command::Bench(a) => cmd_bench(&a),
    })
}

fn load(path: &Path) -> anyhow::Result<AnnotationFile> {
    let file = load_annotations(path).with_context(|| format!("loading {}", path.display()))?;
    if file.skipped > 0 {
        eprintln!("skipped {} crowd/RLE annotations", file.skipped);
    }
    Ok(file)
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

#[derive(Serialize)]
struct AnchorRecord {
    label: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    gt_index: Option<usize>,
    score: f64,
}

#[derive(Serialize)]
struct ImageAssignment {
    image_id: u64,
    width: u32,
    height: u32,
    anchors: Vec<AnchorRecord>,
    summary: LabelCounts,
}

#[derive(Serialize)]
struct AssignReport {
    assigner: AssignerKind,
    measure: String,
    anchor_config: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pos_thr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    neg_thr: Option<f64>,
    images: Vec<ImageAssignment>,
    summary: LabelCounts,
}

enum Assigner {
    Fixed(FixedThresholdConfig, Measure),
    Atss(AtssConfig),
}

impl Assigner {
    fn run(&self, img: &DatasetImage, anchors: &AnchorConfig) -> anyhow::Result<AssignmentResult> {
        let grid = generate_anchors(img.width, img.height, anchors)?;
        Ok(match self {
            Assigner::Fixed(cfg, m) => assign_fixed(&grid, &img.ground_truths, cfg, m),
            Assigner::Atss(cfg) => assign_atss(&grid, &img.ground_truths, cfg),
        })
    }
}

pub fn cmd_assign(args: &AssignArgs) -> anyhow::Result<i32> {
    let assigner = match args.assigner {
        AssignerKind::Fixed => Assigner::Fixed(FixedThresholdConfig::new(args.neg_thr, args.pos_thr)?, args.measure),
        AssignerKind::Atss => Assigner::Atss(AtssConfig::new(args.k, args.measure)?),
    };
    let anchor_spec = args.anchor_config.clone().unwrap_or_else(|| {
        match args.assigner {
            AssignerKind::Fixed => "yolact-550",
            AssignerKind::Atss => "atss-550",
        }
        .to_string()
    });
    let anchors = AnchorConfig::resolve(&anchor_spec)?;
    let file = load(&args.annotations)?;

    let images: Vec<ImageAssignment> = file
        .images
        .par_iter()
        .map(|info| {
            let img = file.dataset_image(info.id)?;
            let result = assigner.run(&img, &anchors)?;
            let records = result
                .labels
                .iter()
                .zip(&result.scores)
                .map(|(label, &score)| {
                    let (label, gt_index) = match *label {
                        Label::Positive(g) => ("positive", Some(g)),
                        Label::Negative => ("negative", None),
                        Label::Ignore => ("ignore", None),
                    };
                    AnchorRecord { label, gt_index, score }
                })
                .collect();
            Ok(ImageAssignment {
                image_id: img.id,
                width: img.width,
                height: img.height,
                anchors: records,
                summary: result.counts(),
            })
        })
        .collect::<anyhow::Result<_>>()?;

    let mut summary = LabelCounts::default();
    for img in &images {
        summary.add(&img.summary);
    }
    let (k, pos_thr, neg_thr) = match args.assigner {
        AssignerKind::Fixed => (None, Some(args.pos_thr), Some(args.neg_thr)),
        AssignerKind::Atss => (Some(args.k), None, None),
    };
    let report = AssignReport {
        assigner: args.assigner,
        measure: args.measure.to_string(),
        anchor_config: anchor_spec,
        k,
        pos_thr,
        neg_thr,
        images,
        summary,
    };
    let mut out = create(&args.output)?;
    serde_json::to_writer(&mut out, &report)?;
    out.flush()?;
    println!(
        "positive={} negative={} ignore={}",
        summary.positive, summary.negative, summary.ignore
    );
    Ok(EXIT_OK)
}

/// Mask-over-box ratio histogram over `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MobStats {
    pub counts: Vec<u64>,
    pub total: u64,
    pub below_half: u64,
}

impl MobStats {
    pub fn from_ratios(ratios: &[f64], bins: usize) -> Self {
        let mut counts = vec![0; bins];
        for &r in ratios {
            counts[bin_index(r, bins)] += 1;
        }
        Self {
            counts,
            total: ratios.len() as u64,
            below_half: ratios.iter().filter(|&&r| r < 0.5).count() as u64,
        }
    }

    pub fn fraction_below_half(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.below_half as f64 / self.total as f64
        }
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        let bins = self.counts.len();
        writeln!(w, "bin_lo,bin_hi,count,cumulative_fraction")?;
        let mut cumulative = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            cumulative += c;
            let frac = if self.total == 0 { 0.0 } else { cumulative as f64 / self.total as f64 };
            writeln!(
                w,
                "{:.6},{:.6},{},{:.6}",
                i as f64 / bins as f64,
                (i + 1) as f64 / bins as f64,
                c,
                frac
            )?;
        }
        Ok(())
    }
}

pub fn mob_ratios(file: &AnnotationFile) -> anyhow::Result<Vec<f64>> {
    let per_image: Vec<Vec<f64>> = file
        .images
        .par_iter()
        .map(|info| {
            let img = file.dataset_image(info.id)?;
            Ok(img.ground_truths.iter().map(|gt| gt.mob()).collect())
        })
        .collect::<anyhow::Result<_>>()?;
    Ok(per_image.concat())
}

pub fn cmd_stats(args: &StatsArgs) -> anyhow::Result<i32> {
    if args.bins == 0 {
        bail!("--bins must be at least 1");
    }
    let file = load(&args.annotations)?;
    let stats = MobStats::from_ratios(&mob_ratios(&file)?, args.bins);
    let mut out = create(&args.output)?;
    stats.write_csv(&mut out)?;
    out.flush()?;
    println!(
        "ground_truths={} mob_below_0.5={:.6}",
        stats.total,
        stats.fraction_below_half()
    );
    Ok(EXIT_OK)
}

pub fn write_hist2d_csv(hist: &Histogram2d, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "x_bin,y_bin,x_lo,x_hi,y_lo,y_hi,count")?;
    let b = hist.bins() as f64;
    for (i, j, c) in hist.nonzero_cells() {
        writeln!(
            w,
            "{i},{j},{:.6},{:.6},{:.6},{:.6},{c}",
            i as f64 / b,
            (i + 1) as f64 / b,
            j as f64 / b,
            (j + 1) as f64 / b
        )?;
    }
    Ok(())
}

pub fn cmd_hist2d(args: &Hist2dArgs) -> anyhow::Result<i32> {
    if args.bins == 0 {
        bail!("--bins must be at least 1");
    }
    check_hist_measure(args.measure_x)?;
    check_hist_measure(args.measure_y)?;
    let anchors = AnchorConfig::resolve(&args.anchor_config)?;
    let file = load(&args.annotations)?;
    let per_image: Vec<Histogram2d> = file
        .images
        .par_iter()
        .map(|info| {
            let img = file.dataset_image(info.id)?;
            let grid = generate_anchors(img.width, img.height, &anchors)?;
            let boxes = grid.snapped();
            let pairs = boxes
                .iter()
                .flat_map(|b| img.ground_truths.iter().map(move |gt| (*b, gt)));
            Ok(crate::gmaiou::joint_histogram(
                pairs,
                args.measure_x,
                args.measure_y,
                args.bins,
            )?)
        })
        .collect::<anyhow::Result<_>>()?;
    let mut hist = Histogram2d::new(args.bins);
    for h in &per_image {
        hist.merge(h);
    }
    let mut out = create(&args.output)?;
    write_hist2d_csv(&hist, &mut out)?;
    out.flush()?;
    println!("pairs={} off_diagonal={}", hist.total(), hist.off_diagonal());
    Ok(EXIT_OK)
}

#[derive(Debug, Default)]
struct CheckTally {
    pairs: u64,
    strict: u64,
    equal: u64,
    violations: Vec<Violation>,
}

impl CheckTally {
    fn record(&mut self, anchor: &crate::BBox, gt: &crate::GroundTruth) -> anyhow::Result<()> {
        let audit = audit_pair(anchor, gt)?;
        self.pairs += 1;
        if audit.strict() {
            self.strict += 1;
        } else {
            self.equal += 1;
        }
        self.violations.extend(audit.violations);
        Ok(())
    }
}

pub fn cmd_check(args: &CheckArgs) -> anyhow::Result<i32> {
    let mut tally = CheckTally::default();
    if let Some(trials) = args.random_trials {
        if trials == 0 {
            bail!("--random-trials must be at least 1");
        }
        if args.max_side < 2 {
            bail!("--max-side must be at least 2");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        for _ in 0..trials {
            let mut gt = random_instance(&mut rng, args.max_side);
            if args.corrupt_integral {
                gt.corrupt_integral_for_testing();
            }
            let (w, h) = gt.frame();
            let anchor = random_anchor(&mut rng, w, h);
            tally.record(&anchor, &gt)?;
        }
    } else if let Some(path) = &args.annotations {
        if args.max_pairs_per_image == 0 {
            bail!("--max-pairs-per-image must be at least 1");
        }
        let anchors = AnchorConfig::resolve(&args.anchor_config)?;
        let file = load(path)?;
        for info in &file.images {
            let mut img = file.dataset_image(info.id)?;
            if args.corrupt_integral {
                img.ground_truths.iter_mut().for_each(|g| g.corrupt_integral_for_testing());
            }
            let grid = generate_anchors(img.width, img.height, &anchors)?;
            let boxes = grid.snapped();
            let total = boxes.len() * img.ground_truths.len();
            let step = total.div_ceil(args.max_pairs_per_image).max(1);
            for p in (0..total).step_by(step) {
                let (a, g) = (p / img.ground_truths.len(), p % img.ground_truths.len());
                tally.record(&boxes[a], &img.ground_truths[g])?;
            }
        }
    }
    for v in tally.violations.iter().take(20) {
        println!("violation: {v}");
    }
    println!(
        "pairs={} strict={} equal={} violations={}",
        tally.pairs,
        tally.strict,
        tally.equal,
        tally.violations.len()
    );
    Ok(if tally.violations.is_empty() { EXIT_OK } else { EXIT_CHECK_FAILED })
}

pub fn cmd_bench(args: &BenchArgs) -> anyhow::Result<i32> {
    let report = benchmark_pairing(args.anchors, args.gts, args.mask_size, args.repeats, args.seed)?;
    let json = serde_json::to_string_pretty(&report)?;
    println!("{json}");
    if let Some(path) = &args.output {
        std::fs::write(path, &json).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(EXIT_OK)
}
