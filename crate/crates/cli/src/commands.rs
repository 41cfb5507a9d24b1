//! One config schema and runner per subcommand.

use std::fs;
use std::path::{Path, PathBuf};

use lesionkit::condmap::{build_pairs, load_pairs, save_pairs, PairParams};
use lesionkit::corpus::Corpus;
use lesionkit::experiment::{self, published_table, render_csv, render_markdown, run_experiment, ExperimentConfig};
use lesionkit::grid::LESION;
use lesionkit::implanter::{augment_corpus, AugmentPolicy};
use lesionkit::phantom::{gen_corpus, PhantomSpec};
use lesionkit::segmentation::{binarize, predict, train_seg, SegNet, SegTrainConfig};
use lesionkit::synthesis::{
    eval_mse, train, GeneratorNet, NeuralSynthesizer, ProceduralParams, ProceduralSynthesizer, SynthTrainConfig,
    Synthesizer,
};
use lesionkit::volume::{save_float_volume, write_pgm, FloatVolume};
use lesionkit::{seed, Grid};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::CliError;

pub struct Ctx {
    pub out: PathBuf,
    pub jobs: usize,
}

pub enum Outcome {
    Ok,
    /// Finished with some parts failed; the message names them.
    Partial(String),
}

pub trait Command: Serialize + DeserializeOwned + Default {
    const NAME: &'static str;
    /// Config pointer that `--seed` sets, if the subcommand is seeded.
    const SEED_KEY: Option<&'static str>;

    fn seed_value(seed: u64) -> Value {
        json!(seed)
    }

    fn validate(&self) -> Result<(), CliError>;

    /// Named input paths, each checked for existence and hashed.
    fn inputs(&self) -> Vec<(&'static str, Option<&Path>)>;

    fn seed(&self) -> Option<u64>;

    fn run(&self, ctx: &Ctx) -> Result<Outcome, CliError>;
}

fn required<'a>(p: &'a Option<PathBuf>, pointer: &str) -> Result<&'a Path, CliError> {
    p.as_deref().ok_or_else(|| CliError::Config(format!("{pointer}: required path is missing")))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    fs::write(path, serde_json::to_string_pretty(value).expect("serializable"))
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn lift(pointer: &str, e: lesionkit::Error) -> CliError {
    e.nest(pointer).into()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Neural,
    Procedural,
}

fn synthesizer(
    backend: Backend,
    generator: &Option<PathBuf>,
    procedural: ProceduralParams,
) -> Result<Box<dyn Synthesizer>, CliError> {
    Ok(match backend {
        Backend::Procedural => Box::new(ProceduralSynthesizer { params: procedural }),
        Backend::Neural => {
            let dir = required(generator, "/generator")?;
            Box::new(NeuralSynthesizer::new(GeneratorNet::<f64>::load(dir)?))
        }
    })
}

fn check_backend(backend: Backend, generator: &Option<PathBuf>) -> Result<(), CliError> {
    if backend == Backend::Neural && generator.is_none() {
        return Err(CliError::Config("/generator: required when /backend is \"neural\"".into()));
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomRun {
    pub n_slices: usize,
    pub phantom: PhantomSpec,
}

impl Default for PhantomRun {
    fn default() -> Self {
        Self { n_slices: 400, phantom: PhantomSpec::default() }
    }
}

impl Command for PhantomRun {
    const NAME: &'static str = "phantom";
    const SEED_KEY: Option<&'static str> = Some("/phantom/seed");

    fn validate(&self) -> Result<(), CliError> {
        if self.n_slices == 0 {
            return Err(CliError::Config("/n_slices: must be at least 1".into()));
        }
        self.phantom.validate().map_err(|e| lift("/phantom", e))
    }

    fn inputs(&self) -> Vec<(&'static str, Option<&Path>)> {
        Vec::new()
    }

    fn seed(&self) -> Option<u64> {
        Some(self.phantom.seed)
    }

    fn run(&self, ctx: &Ctx) -> Result<Outcome, CliError> {
        let manifest = gen_corpus(&self.phantom, self.n_slices, &ctx.out)?;
        println!(
            "phantom: {} slices, {} lesion-bearing, {} lesions",
            manifest.totals.slices, manifest.totals.lesion_bearing, manifest.totals.lesions
        );
        Ok(Outcome::Ok)
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairsRun {
    pub corpus: Option<PathBuf>,
    pub params: PairParams,
}

impl Command for PairsRun {
    const NAME: &'static str = "pairs";
    const SEED_KEY: Option<&'static str> = None;

    fn validate(&self) -> Result<(), CliError> {
        required(&self.corpus, "/corpus")?;
        self.params.validate().map_err(|e| lift("/params", e))
    }

    fn inputs(&self) -> Vec<(&'static str, Option<&Path>)> {
        vec![("/corpus", self.corpus.as_deref())]
    }

    fn seed(&self) -> Option<u64> {
        None
    }

    fn run(&self, ctx: &Ctx) -> Result<Outcome, CliError> {
        let (corpus, manifest) = Corpus::load(required(&self.corpus, "/corpus")?)?;
        let corpus_id = manifest.sha256()[..12].to_string();
        let set = build_pairs(&corpus, &corpus_id, &self.params)?;
        if set.is_warning() {
            log::warn!("{} lesions below the minimum area were skipped", set.skipped_small);
        }
        let index = save_pairs(&set, self.params.patch_size, &ctx.out)?;
        println!("pairs: {} written, {} skipped as too small", index.pairs.len(), index.skipped_small);
        Ok(Outcome::Ok)
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthTrainRun {
    pub pairs: Option<PathBuf>,
    /// Pairs scored for held-out L1 after each epoch.
    pub held_out: Option<PathBuf>,
    pub train: SynthTrainConfig,
}

impl Command for SynthTrainRun {
    const NAME: &'static str = "synth-train";
    const SEED_KEY: Option<&'static str> = Some("/train/seed");

    fn validate(&self) -> Result<(), CliError> {
        required(&self.pairs, "/pairs")?;
        self.train.validate().map_err(|e| lift("/train", e))
    }

    fn inputs(&self) -> Vec<(&'static str, Option<&Path>)> {
        vec![("/pairs", self.pairs.as_deref()), ("/held_out", self.held_out.as_deref())]
    }

    fn seed(&self) -> Option<u64> {
        Some(self.train.seed)
    }

    fn run(&self, ctx: &Ctx) -> Result<Outcome, CliError> {
        let pairs = load_pairs(required(&self.pairs, "/pairs")?)?.pairs;
        let held_out = match &self.held_out {
            Some(dir) => load_pairs(dir)?.pairs,
            None => Vec::new(),
        };
        let trained = train::<f64>(&pairs, &held_out, &self.train, Some(&ctx.out))?;
        if let Some(last) = trained.log.epochs.last() {
            println!(
                "synth-train: {} epochs, final d_loss {:.6} g_loss {:.6} l1 {:.6}",
                trained.log.epochs.len(),
                last.d_loss,
                last.g_loss,
                last.l1
            );
        }
        Ok(Outcome::Ok)
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSampleRun {
    pub pairs: Option<PathBuf>,
    pub backend: Backend,
    /// Generator checkpoint directory for the neural backend.
    pub generator: Option<PathBuf>,
    pub procedural: ProceduralParams,
    pub seed: u64,
    /// Sample only the first `limit` pairs.
    pub limit: Option<usize>,
}

impl Command for SynthSampleRun {
    const NAME: &'static str = "synth-sample";
    const SEED_KEY: Option<&'static str> = Some("/seed");

    fn validate(&self) -> Result<(), CliError> {
        required(&self.pairs, "/pairs")?;
        check_backend(self.backend, &self.generator)?;
        self.procedural.validate().map_err(|e| lift("/procedural", e))
    }

    fn inputs(&self) -> Vec<(&'static str, Option<&Path>)> {
        vec![("/pairs", self.pairs.as_deref()), ("/generator", self.generator.as_deref())]
    }

    fn seed(&self) -> Option<u64> {
        Some(self.seed)
    }

    fn run(&self, ctx: &Ctx) -> Result<Outcome, CliError> {
        let mut pairs = load_pairs(required(&self.pairs, "/pairs")?)?.pairs;
        pairs.truncate(self.limit.unwrap_or(usize::MAX));
        let synth = synthesizer(self.backend, &self.generator, self.procedural)?;
        for (i, pair) in pairs.iter().enumerate() {
            let mut rng = seed::stream(self.seed, &[seed::tag("sample"), i as u64]);
            let img = synth.synthesize(&pair.source, &mut rng)?;
            let (h, w) = img.dims();
            save_float_volume(
                &FloatVolume { dims: [1, h, w], data: img.data().to_vec() },
                &ctx.out.join(format!("sample_{i:05}.volj")),
            )?;
            write_pgm(&img, &ctx.out.join(format!("sample_{i:05}.pgm")))?;
        }
        let mse = if pairs.is_empty() { None } else { Some(eval_mse(synth.as_ref(), &pairs, self.seed)?) };
        write_json(&ctx.out.join("summary.json"), &json!({ "backend": synth.name(), "samples": pairs.len(), "mse": mse }))?;
        println!("synth-sample: {} samples, mse {}", pairs.len(), mse.map_or("n/a".into(), |m| format!("{m:.6}")));
        Ok(Outcome::Ok)
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImplantRun {
    pub corpus: Option<PathBuf>,
    pub pairs: Option<PathBuf>,
    pub backend: Backend,
    pub generator: Option<PathBuf>,
    pub procedural: ProceduralParams,
    pub seed: u64,
    pub policy: AugmentPolicy,
}

impl Command for ImplantRun {
    const NAME: &'static str = "implant";
    const SEED_KEY: Option<&'static str> = Some("/seed");

    fn validate(&self) -> Result<(), CliError> {
        required(&self.corpus, "/corpus")?;
        required(&self.pairs, "/pairs")?;
        check_backend(self.backend, &self.generator)?;
        self.procedural.validate().map_err(|e| lift("/procedural", e))?;
        self.policy.validate().map_err(|e| lift("/policy", e))
    }

    fn inputs(&self) -> Vec<(&'static str, Option<&Path>)> {
        vec![
            ("/corpus", self.corpus.as_deref()),
            ("/pairs", self.pairs.as_deref()),
            ("/generator", self.generator.as_deref()),
        ]
    }

    fn seed(&self) -> Option<u64> {
        Some(self.seed)
    }

    fn run(&self, ctx: &Ctx) -> Result<Outcome, CliError> {
        let (corpus, _) = Corpus::load(required(&self.corpus, "/corpus")?)?;
        let pairs = load_pairs(required(&self.pairs, "/pairs")?)?.pairs;
        let synth = synthesizer(self.backend, &self.generator, self.procedural)?;
        let aug = augment_corpus(&corpus, &pairs, synth.as_ref(), self.seed, &self.policy)?;
        let source = json!({ "implant": { "backend": synth.name(), "seed": self.seed } });
        aug.corpus.quantized().save(&ctx.out, source)?;
        write_json(&ctx.out.join("augment_manifest.json"), &aug.manifest)?;
        let m = &aug.manifest;
        println!(
            "implant: {} synthetic lesions over {} slices, {} placements skipped{}",
            m.synthetic_total,
            m.slices.len(),
            m.skipped,
            if m.unreachable { ", target unreachable" } else { "" }
        );
        Ok(Outcome::Ok)
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegTrainRun {
    pub corpus: Option<PathBuf>,
    pub train: SegTrainConfig,
}

impl Command for SegTrainRun {
    const NAME: &'static str = "seg-train";
    const SEED_KEY: Option<&'static str> = Some("/train/seed");

    fn validate(&self) -> Result<(), CliError> {
        required(&self.corpus, "/corpus")?;
        self.train.validate().map_err(|e| lift("/train", e))
    }

    fn inputs(&self) -> Vec<(&'static str, Option<&Path>)> {
        vec![("/corpus", self.corpus.as_deref())]
    }

    fn seed(&self) -> Option<u64> {
        Some(self.train.seed)
    }

    fn run(&self, ctx: &Ctx) -> Result<Outcome, CliError> {
        let (corpus, _) = Corpus::load(required(&self.corpus, "/corpus")?)?;
        let trained = train_seg::<f64>(&corpus.slices, &self.train, Some(&ctx.out))?;
        if let Some(last) = trained.log.epochs.last() {
            println!("seg-train: {} epochs, final loss {:.6}", trained.log.epochs.len(), last.loss);
        }
        Ok(Outcome::Ok)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegEvalRun {
    /// Segmenter checkpoint directory.
    pub model: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub threshold: f64,
}

impl Default for SegEvalRun {
    fn default() -> Self {
        Self { model: None, corpus: None, threshold: 0.5 }
    }
}

#[derive(Serialize)]
struct SliceDice {
    id: String,
    dice: f64,
}

impl Command for SegEvalRun {
    const NAME: &'static str = "seg-eval";
    const SEED_KEY: Option<&'static str> = None;

    fn validate(&self) -> Result<(), CliError> {
        required(&self.model, "/model")?;
        required(&self.corpus, "/corpus")?;
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(CliError::Config(format!("/threshold: {} must lie in (0, 1)", self.threshold)));
        }
        Ok(())
    }

    fn inputs(&self) -> Vec<(&'static str, Option<&Path>)> {
        vec![("/model", self.model.as_deref()), ("/corpus", self.corpus.as_deref())]
    }

    fn seed(&self) -> Option<u64> {
        None
    }

    fn run(&self, ctx: &Ctx) -> Result<Outcome, CliError> {
        let net = SegNet::<f64>::load(required(&self.model, "/model")?)?;
        let (corpus, _) = Corpus::load(required(&self.corpus, "/corpus")?)?;
        let mut slices = Vec::with_capacity(corpus.len());
        let mut background = 0.0;
        for s in &corpus.slices {
            let gt = s.label.select(LESION);
            let pred = binarize(&predict(&net, &s.image)?, self.threshold);
            slices.push(SliceDice { id: s.id.clone(), dice: experiment::dice_score(&pred, &gt)? });
            let (h, w) = gt.dims();
            background += experiment::dice_score(&Grid::filled(h, w, 0u8), &gt)?;
        }
        let n = slices.len().max(1) as f64;
        let mean = slices.iter().map(|s| s.dice).sum::<f64>() / n;
        write_json(
            &ctx.out.join("eval.json"),
            &json!({
                "mean_dice": experiment::round6(mean),
                "background_baseline": experiment::round6(background / n),
                "threshold": self.threshold,
                "aggregation": experiment::AGGREGATION_NOTE,
                "slices": slices,
            }),
        )?;
        println!("seg-eval: mean Dice {mean:.6} over {} slices", slices.len());
        Ok(Outcome::Ok)
    }
}

impl Command for ExperimentConfig {
    const NAME: &'static str = "experiment";
    const SEED_KEY: Option<&'static str> = Some("/seeds");

    fn seed_value(seed: u64) -> Value {
        json!([seed])
    }

    fn validate(&self) -> Result<(), CliError> {
        ExperimentConfig::validate(self).map_err(|e| lift("", e))
    }

    fn inputs(&self) -> Vec<(&'static str, Option<&Path>)> {
        vec![("/corpus_dir", self.corpus_dir.as_deref())]
    }

    fn seed(&self) -> Option<u64> {
        self.seeds.first().copied()
    }

    fn run(&self, ctx: &Ctx) -> Result<Outcome, CliError> {
        let report = run_experiment(self, &ctx.out, ctx.jobs)?;
        println!("{}", experiment::render_table(&report)?.0);
        let failed: Vec<String> = report
            .arms
            .iter()
            .flat_map(|a| a.runs.iter().filter(|r| r.dice.is_none()).map(move |r| format!("{} seed {}", a.arm.name(), r.seed)))
            .collect();
        if failed.is_empty() {
            Ok(Outcome::Ok)
        } else {
            Ok(Outcome::Partial(format!("failed arms: {}", failed.join(", "))))
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportRun {
    /// A `report.json` or the experiment directory holding one.
    pub report: Option<PathBuf>,
    /// Render the published reference table instead.
    pub published: bool,
}

impl Command for ReportRun {
    const NAME: &'static str = "report";
    const SEED_KEY: Option<&'static str> = None;

    fn validate(&self) -> Result<(), CliError> {
        if self.published == self.report.is_some() {
            return Err(CliError::Config("/report: give exactly one of /report and /published".into()));
        }
        Ok(())
    }

    fn inputs(&self) -> Vec<(&'static str, Option<&Path>)> {
        vec![("/report", self.report.as_deref())]
    }

    fn seed(&self) -> Option<u64> {
        None
    }

    fn run(&self, ctx: &Ctx) -> Result<Outcome, CliError> {
        match &self.report {
            None => {
                let table = published_table();
                let md = render_markdown(&table);
                fs::write(ctx.out.join("published_table.md"), &md).map_err(|e| CliError::Io(e.to_string()))?;
                fs::write(ctx.out.join("published_table.csv"), render_csv(&table)?).map_err(|e| CliError::Io(e.to_string()))?;
                println!("{md}");
            }
            Some(path) => {
                let path = if path.is_dir() { path.join("report.json") } else { path.clone() };
                let report = experiment::read_report(&path)?;
                experiment::write_report(&report, &ctx.out)?;
                println!("{}", experiment::render_table(&report)?.0);
            }
        }
        Ok(Outcome::Ok)
    }
}
