//! Five-arm segmentation experiment: real, synthetic-only and combined
//! training sets, scored by per-slice Dice on a shared held-out split.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::condmap::{build_pairs, LesionPair, PairParams};
use crate::corpus::Corpus;
use crate::error::{io_err, json_err, Error, Result};
use crate::grid::{Mask, LESION};
use crate::implanter::{augment_corpus, AugmentManifest, AugmentPolicy};
use crate::phantom::{gen_corpus_in_memory, PhantomSpec};
use crate::seed;
use crate::segmentation::{binarize, predict, train_seg, SegNet, SegTrainConfig};
use crate::synthesis::{
    eval_mse, train as train_synth, NeuralSynthesizer, ProceduralParams, ProceduralSynthesizer, SynthTrainConfig,
    Synthesizer,
};

/// Training-set configurations, in table column order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Arm {
    SynthOnlyNeural,
    SynthOnlyProcedural,
    RealOnly,
    CombinedNeural,
    CombinedProcedural,
}

impl Arm {
    pub const ALL: [Arm; 5] =
        [Arm::SynthOnlyNeural, Arm::SynthOnlyProcedural, Arm::RealOnly, Arm::CombinedNeural, Arm::CombinedProcedural];

    pub fn name(self) -> &'static str {
        match self {
            Arm::SynthOnlyNeural => "SynthOnlyNeural",
            Arm::SynthOnlyProcedural => "SynthOnlyProcedural",
            Arm::RealOnly => "RealOnly",
            Arm::CombinedNeural => "CombinedNeural",
            Arm::CombinedProcedural => "CombinedProcedural",
        }
    }

    pub fn column(self) -> &'static str {
        match self {
            Arm::SynthOnlyNeural => "Neural",
            Arm::SynthOnlyProcedural => "Procedural",
            Arm::RealOnly => "Original",
            Arm::CombinedNeural => "Neural+",
            Arm::CombinedProcedural => "Procedural+",
        }
    }

    fn neural(self) -> bool {
        matches!(self, Arm::SynthOnlyNeural | Arm::CombinedNeural)
    }
}

/// `2|P∩G| / (|P| + |G|)`, and 1 when both masks are empty.
pub fn dice_score(pred: &Mask, gt: &Mask) -> Result<f64> {
    pred.expect_dims(gt, "dice_score")?;
    let (mut inter, mut np, mut ng) = (0usize, 0usize, 0usize);
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        let (p, g) = (p != 0, g != 0);
        inter += (p && g) as usize;
        np += p as usize;
        ng += g as usize;
    }
    if np + ng == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (np + ng) as f64)
}

pub fn relative_gain(augmented: f64, baseline: f64) -> Result<f64> {
    if !(baseline > 0.0) {
        return Err(Error::Usage(format!("relative gain needs a positive baseline, got {baseline}")));
    }
    Ok((augmented - baseline) / baseline)
}

/// Values are stored at 6 decimals so they survive text round trips.
pub fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub label: String,
    pub values: Vec<Option<f64>>,
    /// Bold the row maximum in markdown.
    pub mark_max: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiceTable {
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
}

/// Published Dice values for the two segmenters over the five training
/// sets, as a reference row set.
pub fn published_table() -> DiceTable {
    let row = |label: &str, v: [f64; 5]| TableRow {
        label: label.into(),
        values: v.iter().map(|&x| Some(x)).collect(),
        mark_max: true,
    };
    DiceTable {
        columns: ["Pix2Pix", "SPADE", "Original", "Pix2Pix+", "SPADE+"].map(String::from).to_vec(),
        rows: vec![
            row("U-Net", [0.568, 0.5604, 0.5038, 0.565, 0.5607]),
            row("PSP-Net", [0.6089, 0.6055, 0.5843, 0.6082, 0.605]),
        ],
    }
}

/// Published synthesis MSE of the two reference synthesizers.
pub const PUBLISHED_MSE: [(&str, f64); 2] = [("Pix2Pix", 0.0108), ("SPADE", 0.0102)];

fn fmt6(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "failed".into())
}

pub fn render_markdown(table: &DiceTable) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "| | {} |", table.columns.join(" | "));
    let _ = writeln!(out, "|---|{}", "---|".repeat(table.columns.len()));
    for row in &table.rows {
        let max = row.values.iter().flatten().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let cells: Vec<String> = row
            .values
            .iter()
            .map(|v| match v {
                Some(x) if row.mark_max && *x == max => format!("**{x:.6}**"),
                _ => fmt6(*v),
            })
            .collect();
        let _ = writeln!(out, "| {} | {} |", row.label, cells.join(" | "));
    }
    out
}

pub fn render_csv(table: &DiceTable) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["row".to_string()];
    header.extend(table.columns.iter().cloned());
    w.write_record(&header)?;
    for row in &table.rows {
        let mut rec = vec![row.label.clone()];
        rec.extend(row.values.iter().map(|v| fmt6(*v)));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Usage(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

/// Inverse of [`render_csv`]; `mark_max` is not stored and comes back
/// `true`.
pub fn parse_csv(text: &str) -> Result<DiceTable> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let columns: Vec<String> = r.headers()?.iter().skip(1).map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let label = rec.get(0).unwrap_or_default().to_string();
        let values = rec
            .iter()
            .skip(1)
            .map(|s| match s {
                "failed" => Ok(None),
                s => s.parse::<f64>().map(Some).map_err(|e| Error::Usage(format!("bad table value {s:?}: {e}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(TableRow { label, values, mark_max: true });
    }
    Ok(DiceTable { columns, rows })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Existing corpus directory; when absent the corpus is generated
    /// from `phantom` and `n_slices`.
    pub corpus_dir: Option<PathBuf>,
    pub phantom: PhantomSpec,
    pub n_slices: usize,
    pub test_fraction: f64,
    /// Seeds the train/test split, which is shared by every seed and arm.
    pub split_seed: u64,
    pub arms: Vec<Arm>,
    pub seeds: Vec<u64>,
    pub pairs: PairParams,
    pub synth: SynthTrainConfig,
    pub procedural: ProceduralParams,
    pub augment: AugmentPolicy,
    pub seg: SegTrainConfig,
    /// Per-arm replacements of `seg`.
    pub arm_seg: BTreeMap<Arm, SegTrainConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            corpus_dir: None,
            phantom: PhantomSpec::default(),
            n_slices: 400,
            test_fraction: 0.2,
            split_seed: 0,
            arms: Arm::ALL.to_vec(),
            seeds: vec![0, 1, 2],
            pairs: PairParams::default(),
            synth: SynthTrainConfig { epochs: 8, ..SynthTrainConfig::default() },
            procedural: ProceduralParams::default(),
            augment: AugmentPolicy::default(),
            seg: SegTrainConfig {
                epochs: 2,
                steps_per_epoch: None,
                learning_rate: 5e-3,
                final_lr_fraction: 0.05,
                ..SegTrainConfig::default()
            },
            arm_seg: BTreeMap::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.arms.is_empty() {
            return Err(Error::Config("/arms: at least one arm is required".into()));
        }
        let distinct: BTreeSet<_> = self.arms.iter().collect();
        if distinct.len() != self.arms.len() {
            return Err(Error::Config("/arms: arms must not repeat".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("/seeds: at least one seed is required".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!("/test_fraction: {} must lie in (0, 1)", self.test_fraction)));
        }
        if self.corpus_dir.is_none() {
            if self.n_slices < 2 {
                return Err(Error::Config("/n_slices: need >= 2 slices to split".into()));
            }
            self.phantom.validate().map_err(|e| e.nest("/phantom"))?;
        }
        self.pairs.validate().map_err(|e| e.nest("/pairs"))?;
        self.synth.validate().map_err(|e| e.nest("/synth"))?;
        self.procedural.validate().map_err(|e| e.nest("/procedural"))?;
        self.augment.validate().map_err(|e| e.nest("/augment"))?;
        self.seg.validate().map_err(|e| e.nest("/seg"))?;
        for (arm, cfg) in &self.arm_seg {
            cfg.validate().map_err(|e| e.nest(&format!("/arm_seg/{}", arm.name())))?;
        }
        if self.synth.net.patch_size != self.pairs.patch_size {
            return Err(Error::Config(format!(
                "/synth/net/patch_size: {} must equal /pairs/patch_size {}",
                self.synth.net.patch_size, self.pairs.patch_size
            )));
        }
        Ok(())
    }

    pub fn seg_for(&self, arm: Arm) -> &SegTrainConfig {
        self.arm_seg.get(&arm).unwrap_or(&self.seg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub dice: Option<f64>,
    pub error: Option<String>,
    /// Content hash of the training corpus the arm used.
    pub corpus_hash: Option<String>,
    pub training_slices: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub arm: Arm,
    pub runs: Vec<SeedResult>,
    /// Over successful seeds; `None` if every seed failed.
    pub mean: Option<f64>,
    pub sd: Option<f64>,
}

impl ArmResult {
    pub fn failed(&self) -> bool {
        self.runs.iter().any(|r| r.dice.is_none())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisMse {
    pub seed: u64,
    /// `None` when that backend was not trained or its training failed.
    pub neural: Option<f64>,
    pub procedural: Option<f64>,
    pub held_out_pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiceReport {
    pub aggregation: String,
    pub arms: Vec<ArmResult>,
    /// Mean Dice of predicting background everywhere.
    pub background_baseline: f64,
    /// Relative gain of each arm's mean over the RealOnly mean.
    pub relative_gain: BTreeMap<Arm, f64>,
    pub synthesis_mse: Vec<SynthesisMse>,
    pub published_reference: DiceTable,
    pub published_mse: BTreeMap<String, f64>,
    pub corpus_hash: String,
    pub test_ids: Vec<String>,
    pub config: ExperimentConfig,
}

impl DiceReport {
    pub fn arm(&self, arm: Arm) -> Option<&ArmResult> {
        self.arms.iter().find(|a| a.arm == arm)
    }

    pub fn any_failed(&self) -> bool {
        self.arms.iter().any(ArmResult::failed)
    }
}

pub const AGGREGATION_NOTE: &str = "Dice is averaged per test slice; lesion-free slices count, and an empty prediction on an empty ground truth scores 1.0.";

/// Columns in table order; rows are the seeds, then mean and sd.
pub fn report_table(report: &DiceReport) -> DiceTable {
    let arms: Vec<&ArmResult> = Arm::ALL.iter().filter_map(|&a| report.arm(a)).collect();
    let mut rows = Vec::new();
    for (i, s) in report.config.seeds.iter().enumerate() {
        rows.push(TableRow {
            label: format!("seed {s}"),
            values: arms.iter().map(|a| a.runs.get(i).and_then(|r| r.dice)).collect(),
            mark_max: true,
        });
    }
    rows.push(TableRow { label: "mean".into(), values: arms.iter().map(|a| a.mean).collect(), mark_max: true });
    rows.push(TableRow { label: "sd".into(), values: arms.iter().map(|a| a.sd).collect(), mark_max: false });
    DiceTable { columns: arms.iter().map(|a| a.arm.column().to_string()).collect(), rows }
}

/// Markdown (with context sections) and CSV renderings of a report.
pub fn render_table(report: &DiceReport) -> Result<(String, String)> {
    if report.arms.is_empty() {
        return Err(Error::Usage("cannot render an empty report".into()));
    }
    let table = report_table(report);
    let mut md = String::from("# Lesion segmentation Dice by training set\n\n");
    let _ = writeln!(md, "{}\n", report.aggregation);
    md.push_str(&render_markdown(&table));
    let _ = writeln!(md, "\nPredict-all-background baseline: {:.6}\n", report.background_baseline);
    if !report.relative_gain.is_empty() {
        md.push_str("Relative gain over RealOnly:\n\n");
        for (arm, g) in &report.relative_gain {
            let _ = writeln!(md, "- {}: {:.6}", arm.name(), g);
        }
        md.push('\n');
    }
    if !report.synthesis_mse.is_empty() {
        md.push_str("Synthesis MSE on held-out lesion pairs (mask plus 2-pixel ring):\n\n| seed | neural | procedural |\n|---|---|---|\n");
        for m in &report.synthesis_mse {
            let na = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.6}"));
            let _ = writeln!(md, "| {} | {} | {} |", m.seed, na(m.neural), na(m.procedural));
        }
        md.push('\n');
    }
    md.push_str("## Published reference (full-scale data, not reproduced here)\n\n");
    md.push_str(&render_markdown(&report.published_reference));
    let mse: Vec<String> = report.published_mse.iter().map(|(k, v)| format!("{k} {v}")).collect();
    let _ = writeln!(md, "\nPublished synthesis MSE: {}", mse.join(", "));
    Ok((md, render_csv(&table)?))
}

/// Seeded split; returns sorted `(train, test)` slice indices.
pub fn split_indices(n: usize, test_fraction: f64, split_seed: u64) -> (Vec<usize>, Vec<usize>) {
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::stream(split_seed, &[seed::tag("split")]));
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    (train, test)
}

fn subset(corpus: &Corpus, idx: &[usize]) -> Corpus {
    Corpus { slices: idx.iter().map(|&i| corpus.slices[i].clone()).collect() }
}

fn real_lesions(corpus: &Corpus) -> usize {
    corpus.records().iter().map(|r| r.lesions).sum()
}

/// Mean per-slice Dice of a predictor over a corpus.
pub fn mean_dice(corpus: &Corpus, mut predict_mask: impl FnMut(usize) -> Result<Mask>) -> Result<f64> {
    let mut total = 0.0;
    for (i, s) in corpus.slices.iter().enumerate() {
        total += dice_score(&predict_mask(i)?, &s.label.select(LESION))?;
    }
    Ok(total / corpus.len().max(1) as f64)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(json_err(path))?;
    fs::write(path, text).map_err(io_err(path))
}

fn mean_sd(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (Some(round6(mean)), Some(round6(sd)))
}

struct ArmContext<'a> {
    config: &'a ExperimentConfig,
    train: &'a Corpus,
    test: &'a Corpus,
    test_ids: &'a BTreeSet<String>,
    pairs: &'a [LesionPair],
    out: PathBuf,
}

fn run_arm(ctx: &ArmContext, arm: Arm, seed_value: u64, synth: Option<&(dyn Synthesizer + Sync)>) -> Result<(f64, String, usize)> {
    let dir = ctx.out.join(format!("seed_{seed_value}")).join(arm.name());
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let real = real_lesions(ctx.train);
    let (corpus, manifest): (Corpus, Option<AugmentManifest>) = match arm {
        Arm::RealOnly => (ctx.train.clone(), None),
        _ => {
            let synth = synth.ok_or_else(|| Error::Usage(format!("{}: synthesizer unavailable", arm.name())))?;
            let synth_only = matches!(arm, Arm::SynthOnlyNeural | Arm::SynthOnlyProcedural);
            let base = if synth_only {
                Corpus { slices: ctx.train.slices.iter().filter(|s| s.label.count(LESION) == 0).cloned().collect() }
            } else {
                ctx.train.clone()
            };
            if base.is_empty() {
                return Err(Error::Usage(format!("{}: the training split has no lesion-free slices", arm.name())));
            }
            let policy = AugmentPolicy { target: Some(ctx.config.augment.target.unwrap_or(real)), ..ctx.config.augment.clone() };
            let aug_seed = seed::derive(seed_value, &[seed::tag("augment"), seed::tag(arm.name())]);
            let aug = augment_corpus(&base, ctx.pairs, synth, aug_seed, &policy)?;
            (aug.corpus, Some(aug.manifest))
        }
    };
    let corpus = corpus.quantized();
    for s in &corpus.slices {
        let origin = manifest
            .as_ref()
            .and_then(|m| m.slices.iter().find(|r| r.id == s.id))
            .and_then(|r| r.source_id.clone())
            .unwrap_or_else(|| s.id.clone());
        if ctx.test_ids.contains(&s.id) || ctx.test_ids.contains(&origin) {
            return Err(Error::Usage(format!("{}: test slice {origin} leaked into training", arm.name())));
        }
    }
    let source = serde_json::json!({ "arm": arm.name(), "seed": seed_value });
    corpus.save(&dir.join("corpus"), source)?;
    if let Some(m) = &manifest {
        write_json(&dir.join("corpus").join("augment_manifest.json"), m)?;
    }
    let mut seg = ctx.config.seg_for(arm).clone();
    seg.seed = seed::derive(seed_value, &[seed::tag("seg"), seed::tag(arm.name())]);
    let trained = train_seg::<f64>(&corpus.slices, &seg, Some(&dir.join("seg")))?;
    let dice = evaluate(&trained.net, ctx.test, seg.threshold)?;
    write_json(&dir.join("eval.json"), &serde_json::json!({ "mean_dice": dice, "test_slices": ctx.test.len() }))?;
    Ok((dice, corpus.content_hash(), corpus.len()))
}

pub fn evaluate(net: &SegNet<f64>, test: &Corpus, threshold: f64) -> Result<f64> {
    mean_dice(test, |i| Ok(binarize(&predict(net, &test.slices[i].image)?, threshold)))
}

/// Run `tasks` closures on up to `jobs` threads; results keep task order.
fn fan_out<T: Send>(jobs: usize, tasks: Vec<Box<dyn FnOnce() -> T + Send + '_>>) -> Vec<T> {
    let n = tasks.len();
    let slots: Vec<Mutex<Option<Box<dyn FnOnce() -> T + Send + '_>>>> = tasks.into_iter().map(|t| Mutex::new(Some(t))).collect();
    let results: Vec<Mutex<Option<T>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, n.max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let task = slots[i].lock().expect("task slot").take().expect("task runs once");
                *results[i].lock().expect("result slot") = Some(task());
            });
        }
    });
    results.into_iter().map(|m| m.into_inner().expect("result slot").expect("every task ran")).collect()
}

/// Train every `(seed, arm)` combination and score it on the shared test
/// split. Arm failures are recorded in the report rather than returned.
pub fn run_experiment(config: &ExperimentConfig, out: &Path, jobs: usize) -> Result<DiceReport> {
    config.validate()?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let corpus = match &config.corpus_dir {
        Some(dir) => Corpus::load(dir)?.0,
        None => {
            let c = gen_corpus_in_memory(&config.phantom, config.n_slices)?;
            c.save(&out.join("corpus"), serde_json::json!({ "phantom": config.phantom, "n_slices": config.n_slices }))?;
            c
        }
    };
    if corpus.len() < 2 {
        return Err(Error::Usage("experiment corpus needs at least two slices".into()));
    }
    let (train_idx, test_idx) = split_indices(corpus.len(), config.test_fraction, config.split_seed);
    let train = subset(&corpus, &train_idx);
    let test = subset(&corpus, &test_idx);
    let test_ids: BTreeSet<String> = test.slices.iter().map(|s| s.id.clone()).collect();
    let pairs = build_pairs(&train, "train", &config.pairs)?.pairs;
    let held_out = build_pairs(&test, "test", &config.pairs)?.pairs;
    log::info!("experiment: {} train / {} test slices, {} training pairs", train.len(), test.len(), pairs.len());

    let procedural = ProceduralSynthesizer { params: config.procedural };
    let needs_neural = config.arms.iter().any(|a| a.neural());
    let synth_tasks: Vec<Box<dyn FnOnce() -> Result<Option<NeuralSynthesizer>> + Send + '_>> = config
        .seeds
        .iter()
        .map(|&s| {
            let pairs = &pairs;
            let held_out = &held_out;
            Box::new(move || {
                if !needs_neural {
                    return Ok(None);
                }
                let cfg = SynthTrainConfig { seed: seed::derive(s, &[seed::tag("synth")]), ..config.synth.clone() };
                let dir = out.join(format!("seed_{s}")).join("synth");
                let trained = train_synth::<f64>(pairs, held_out, &cfg, Some(&dir))?;
                Ok(Some(NeuralSynthesizer::new(trained.generator)))
            }) as Box<dyn FnOnce() -> _ + Send + '_>
        })
        .collect();
    let synths = fan_out(jobs, synth_tasks);

    let mut synthesis_mse = Vec::new();
    for (&s, neural) in config.seeds.iter().zip(&synths) {
        let mse_seed = seed::derive(s, &[seed::tag("mse")]);
        let score = |syn: &dyn Synthesizer| -> Option<f64> {
            if held_out.is_empty() {
                None
            } else {
                eval_mse(syn, &held_out, mse_seed).ok().map(round6)
            }
        };
        synthesis_mse.push(SynthesisMse {
            seed: s,
            neural: match neural {
                Ok(Some(n)) => score(n),
                _ => None,
            },
            procedural: score(&procedural),
            held_out_pairs: held_out.len(),
        });
    }

    let ctx = ArmContext { config, train: &train, test: &test, test_ids: &test_ids, pairs: &pairs, out: out.to_path_buf() };
    let mut tasks: Vec<Box<dyn FnOnce() -> Result<(f64, String, usize)> + Send + '_>> = Vec::new();
    let mut keys = Vec::new();
    for (si, &s) in config.seeds.iter().enumerate() {
        for &arm in Arm::ALL.iter().filter(|a| config.arms.contains(a)) {
            let ctx = &ctx;
            let synth: std::result::Result<Option<&(dyn Synthesizer + Sync)>, String> = if arm.neural() {
                match &synths[si] {
                    Ok(Some(n)) => Ok(Some(n as &(dyn Synthesizer + Sync))),
                    Ok(None) => Err("neural synthesizer was not trained".into()),
                    Err(e) => Err(format!("synthesizer training failed: {e}")),
                }
            } else if arm == Arm::RealOnly {
                Ok(None)
            } else {
                Ok(Some(&procedural as &(dyn Synthesizer + Sync)))
            };
            keys.push((s, arm));
            tasks.push(Box::new(move || match synth {
                Ok(syn) => run_arm(ctx, arm, s, syn),
                Err(msg) => Err(Error::TrainingAborted(msg)),
            }));
        }
    }
    let outcomes = fan_out(jobs, tasks);

    let mut by_arm: BTreeMap<Arm, Vec<SeedResult>> = BTreeMap::new();
    for ((s, arm), outcome) in keys.into_iter().zip(outcomes) {
        let result = match outcome {
            Ok((dice, hash, n)) => SeedResult { seed: s, dice: Some(round6(dice)), error: None, corpus_hash: Some(hash), training_slices: n },
            Err(e) => {
                log::error!("arm {} seed {s} failed: {e}", arm.name());
                SeedResult { seed: s, dice: None, error: Some(e.to_string()), corpus_hash: None, training_slices: 0 }
            }
        };
        by_arm.entry(arm).or_default().push(result);
    }
    let arms: Vec<ArmResult> = by_arm
        .into_iter()
        .map(|(arm, runs)| {
            let ok: Vec<f64> = runs.iter().filter_map(|r| r.dice).collect();
            let (mean, sd) = mean_sd(&ok);
            ArmResult { arm, runs, mean, sd }
        })
        .collect();

    let background = round6(mean_dice(&test, |i| Ok(test.slices[i].label.map(|_| 0u8)))?);
    let mut gains = BTreeMap::new();
    if let Some(base) = arms.iter().find(|a| a.arm == Arm::RealOnly).and_then(|a| a.mean) {
        for a in &arms {
            if let (Some(m), true) = (a.mean, a.arm != Arm::RealOnly) {
                if let Ok(g) = relative_gain(m, base) {
                    gains.insert(a.arm, round6(g));
                }
            }
        }
    }
    let report = DiceReport {
        aggregation: AGGREGATION_NOTE.into(),
        arms,
        background_baseline: background,
        relative_gain: gains,
        synthesis_mse,
        published_reference: published_table(),
        published_mse: PUBLISHED_MSE.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
        corpus_hash: corpus.content_hash(),
        test_ids: test_ids.into_iter().collect(),
        config: config.clone(),
    };
    write_report(&report, out)?;
    Ok(report)
}

pub fn write_report(report: &DiceReport, out: &Path) -> Result<()> {
    write_json(&out.join("report.json"), report)?;
    let (md, csv) = render_table(report)?;
    fs::write(out.join("report.md"), md).map_err(io_err(out.join("report.md")))?;
    fs::write(out.join("report.csv"), csv).map_err(io_err(out.join("report.csv")))?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<DiceReport> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(json_err(path))
}
