use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use csntax_core::encoding::{randomize_features, AblationMode};
use csntax_core::model::{read_checkpoint, write_checkpoint, Logits};
use csntax_core::stats::{
    cohens_kappa, confidence_agreement_correlation, paired_permutation_test, scaled_nll, temperature_scale,
    unpaired_permutation_test, AgreementReport, PermutationReport,
};
use csntax_core::synth::{generate_dataset, RuleFamily, SynthSidecar, SyntheticRule};
use csntax_core::train::{
    evaluate, learning_curve, median_run, train, CurvePoint, EvalReport, MedianRun, SeedRun, TrainReport,
};
use csntax_core::ud::{read_dataset, write_dataset, Dataset, Label, Split};
use serde::{Deserialize, Serialize};

use crate::config::{ModelArgs, RunConfig, StatsArgs, TrainArgs};
use crate::manifest::RunManifest;
use crate::output::{pct, OutDir, Table};
use crate::{AblateCmd, Cli, Command, CurveCmd, EvalCmd, StatsCmd, SynthCmd, TrainCmd};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const EVAL_FILE: &str = "eval.json";
pub const REPORT_TEXT: &str = "report.txt";

/// Shared context of one command invocation.
struct Run<'a> {
    out: &'a OutDir,
    cfg: RunConfig,
    manifest: RunManifest,
}

impl Run<'_> {
    fn load(&mut self, role: &str, path: &Path, split: Split) -> Result<Dataset> {
        let d = read_dataset(path, split).with_context(|| format!("loading {role} data {}", path.display()))?;
        self.manifest.add_input(role, path)?;
        Ok(d)
    }

    fn finish(mut self, text: &str) -> Result<()> {
        self.out.write_text(REPORT_TEXT, text)?;
        self.manifest.config = self.cfg;
        self.manifest.write(&self.out.path)
    }
}

/// Resolves the configuration: defaults, then `--config`, then flags. `--seed`
/// sets the model, generator and statistics seeds, and the training seeds to
/// `seed, seed+1, seed+2` unless `--seeds` is given.
pub fn resolve_config(
    cli: &Cli,
    model: Option<&ModelArgs>,
    training: Option<&TrainArgs>,
    stats: Option<&StatsArgs>,
) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.model.seed = seed;
        cfg.generator.seed = seed;
        cfg.stats.seed = seed;
        cfg.train.seeds = vec![seed, seed.wrapping_add(1), seed.wrapping_add(2)];
    }
    if let Some(m) = model {
        m.apply(&mut cfg.model);
    }
    if let Some(t) = training {
        t.apply(&mut cfg.train);
    }
    if let Some(s) = stats {
        s.apply(&mut cfg.stats);
    }
    cfg.model.validate()?;
    cfg.train.validate()?;
    cfg.stats.validate()?;
    cfg.generator.validate()?;
    Ok(cfg)
}

pub fn dispatch(cli: &Cli, argv: Vec<String>, out: &OutDir) -> Result<RunConfig> {
    let name = match &cli.command {
        Command::Train(_) => "train",
        Command::Eval(_) => "eval",
        Command::Ablate(_) => "ablate",
        Command::Synth(_) => "synth",
        Command::Stats(StatsCmd::Compare(_)) => "stats compare",
        Command::Stats(StatsCmd::Kappa(_)) => "stats kappa",
        Command::Stats(StatsCmd::Calibrate(_)) => "stats calibrate",
        Command::Curve(_) => "curve",
        Command::Rerun(_) => unreachable!("handled before dispatch"),
    };
    let (m, t, s) = match &cli.command {
        Command::Train(c) => (Some(&c.model), Some(&c.training), None),
        Command::Eval(c) => (Some(&c.model), None, None),
        Command::Ablate(c) => (Some(&c.model), Some(&c.training), None),
        Command::Curve(c) => (Some(&c.model), Some(&c.training), None),
        Command::Stats(StatsCmd::Compare(c)) => (None, None, Some(&c.stats)),
        _ => (None, None, None),
    };
    let cfg = resolve_config(cli, m, t, s)?;
    let mut manifest = RunManifest::start(name, argv);
    if let Some(path) = &cli.config {
        manifest.add_input("config", path)?;
    }
    let run = Run { out, cfg: cfg.clone(), manifest };
    match &cli.command {
        Command::Train(c) => cmd_train(run, c),
        Command::Eval(c) => cmd_eval(run, c, cli.config.is_some()),
        Command::Ablate(c) => cmd_ablate(run, c),
        Command::Synth(c) => cmd_synth(run, c),
        Command::Stats(StatsCmd::Compare(c)) => cmd_compare(run, &c.x, &c.y, !c.unpaired),
        Command::Stats(StatsCmd::Kappa(c)) => cmd_kappa(run, &c.x, &c.y),
        Command::Stats(StatsCmd::Calibrate(c)) => cmd_calibrate(run, &c.val, c.test.as_deref()),
        Command::Curve(c) => cmd_curve(run, c),
        Command::Rerun(_) => unreachable!(),
    }?;
    Ok(cfg)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MedianSummary {
    pub median_seed: u64,
    pub test_accuracy: f64,
    pub std: f64,
    pub runs: Vec<SeedRun>,
}

impl MedianSummary {
    fn from_run(run: &MedianRun) -> Self {
        MedianSummary {
            median_seed: run.median_seed,
            test_accuracy: run.report.accuracy,
            std: run.std,
            runs: run.runs.clone(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "protocol", rename_all = "snake_case")]
pub enum TrainOutput {
    Single { batch_unit: String, train: TrainReport },
    MedianOfRuns { batch_unit: String, summary: MedianSummary },
}

fn epochs_table(r: &TrainReport) -> String {
    let mut t = Table::new(["epoch", "train_loss", "val_acc", "val_loss"]);
    for e in &r.epochs {
        let mark = if e.epoch == r.selected_epoch { " *" } else { "" };
        t.row([
            format!("{}{mark}", e.epoch),
            format!("{:.4}", e.train_loss),
            pct(e.val_accuracy),
            format!("{:.4}", e.val_loss),
        ]);
    }
    t.render()
}

fn seeds_table(runs: &[SeedRun]) -> String {
    let mut t = Table::new(["seed", "epochs", "selected", "val_acc", "test_acc"]);
    for r in runs {
        t.row([
            r.seed.to_string(),
            r.train.epochs.len().to_string(),
            r.train.selected_epoch.to_string(),
            pct(r.train.selected().val_accuracy),
            pct(r.test_accuracy),
        ]);
    }
    t.render()
}

fn record_timings(manifest: &mut RunManifest, prefix: &str, runs: &[SeedRun]) {
    for r in runs {
        manifest.time(format!("{prefix}seed {}", r.seed), r.train.wall_clock_seconds);
    }
}

fn cmd_train(mut run: Run, c: &TrainCmd) -> Result<()> {
    let train_set = run.load("train", &c.train, Split::Train)?;
    let val = run.load("validation", &c.val, Split::Validation)?;
    let batch_unit = format!("{} minimal pairs", run.cfg.train.batch_size);
    let header = format!(
        "architecture {}  hidden_dim {}  layers {}  batch {}\n\n",
        run.cfg.model.architecture, run.cfg.model.hidden_dim, run.cfg.model.num_layers, batch_unit
    );
    match &c.test {
        None => {
            let (params, report) = train(&train_set, &val, &run.cfg.model, &run.cfg.train)?;
            write_checkpoint(&params, run.out.file(CHECKPOINT_FILE))?;
            run.manifest.seeds = vec![run.cfg.model.seed];
            run.manifest.time(format!("seed {}", report.seed), report.wall_clock_seconds);
            let text = format!("{header}{}", epochs_table(&report));
            run.out.write_json("train_report.json", &TrainOutput::Single { batch_unit, train: report })?;
            run.finish(&text)
        }
        Some(test_path) => {
            let test = run.load("test", test_path, Split::Test)?;
            let result = median_run(&train_set, &val, &test, &run.cfg.model, &run.cfg.train)?;
            write_checkpoint(&result.params, run.out.file(CHECKPOINT_FILE))?;
            run.out.write_json(EVAL_FILE, &result.report)?;
            run.manifest.seeds = run.cfg.train.seeds.clone();
            record_timings(&mut run.manifest, "", &result.runs);
            let summary = MedianSummary::from_run(&result);
            let text = format!(
                "{header}{}\nmedian run: seed {}  A = {} (std {})\n",
                seeds_table(&summary.runs),
                summary.median_seed,
                pct(summary.test_accuracy),
                pct(summary.std)
            );
            run.out.write_json("train_report.json", &TrainOutput::MedianOfRuns { batch_unit, summary })?;
            run.finish(&text)
        }
    }
}

fn cmd_eval(mut run: Run, c: &EvalCmd, config_given: bool) -> Result<()> {
    let expected = (config_given || c.model.any()).then(|| run.cfg.model.clone());
    let params = read_checkpoint(&c.checkpoint, expected.as_ref())
        .with_context(|| format!("loading checkpoint {}", c.checkpoint.display()))?;
    run.manifest.add_input("checkpoint", &c.checkpoint)?;
    let data = run.load("data", &c.data, Split::Test)?;
    ensure!(!data.is_empty(), "{} contains no pairs", c.data.display());
    let report = evaluate(&params, &data);
    run.out.write_json(EVAL_FILE, &report)?;
    let ties = report.items.iter().filter(|i| i.logits[0] == i.logits[1]).count();
    let text = format!(
        "pairs {}\ncorrect {}\nties {}\nA = {}\n",
        report.items.len(),
        report.items.iter().filter(|i| i.correct).count(),
        ties,
        pct(report.accuracy)
    );
    run.finish(&text)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AblationRow {
    pub mode: AblationMode,
    pub accuracy: f64,
    pub std: f64,
    pub median_seed: u64,
    pub seed_accuracies: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AblationOutput {
    /// Seeds used to re-draw features of the train, validation and test splits.
    pub randomization_seeds: [u64; 3],
    pub rows: Vec<AblationRow>,
}

fn cmd_ablate(mut run: Run, c: &AblateCmd) -> Result<()> {
    let train_set = run.load("train", &c.train, Split::Train)?;
    let val = run.load("validation", &c.val, Split::Validation)?;
    let test = run.load("test", &c.test, Split::Test)?;
    let modes = c.modes.clone().unwrap_or_else(|| AblationMode::ALL.to_vec());
    let base = run.cfg.seed;
    let seeds = [base, base.wrapping_add(1), base.wrapping_add(2)];
    let mut rows = Vec::new();
    let mut table = Table::new(["mode", "A", "std"]);
    for mode in modes {
        let tr = randomize_features(&train_set, mode, seeds[0]);
        let va = randomize_features(&val, mode, seeds[1]);
        let te = randomize_features(&test, mode, seeds[2]);
        let result = median_run(&tr, &va, &te, &run.cfg.model, &run.cfg.train)?;
        run.out.write_json(&format!("ablation/{}.eval.json", mode.as_str()), &result.report)?;
        record_timings(&mut run.manifest, &format!("{} ", mode.as_str()), &result.runs);
        table.row([mode.as_str().to_string(), pct(result.report.accuracy), pct(result.std)]);
        rows.push(AblationRow {
            mode,
            accuracy: result.report.accuracy,
            std: result.std,
            median_seed: result.median_seed,
            seed_accuracies: result.accuracies(),
        });
    }
    run.manifest.seeds = run.cfg.train.seeds.iter().copied().chain(seeds).collect();
    run.out.write_json("ablation.json", &AblationOutput { randomization_seeds: seeds, rows })?;
    run.finish(&table.render())
}

fn cmd_synth(mut run: Run, c: &SynthCmd) -> Result<()> {
    let g = &mut run.cfg.generator;
    if let Some(n) = c.n {
        g.n_pairs = n;
    }
    if let Some(sizes) = &c.splits {
        ensure!(sizes.len() == 3, "--splits takes three sizes: train,validation,test");
        g.n_pairs = sizes.iter().sum();
    }
    if let Some(v) = c.min_len {
        g.min_len = v;
    }
    if let Some(v) = c.max_len {
        g.max_len = v;
    }
    if let Some(v) = c.perturbation {
        g.perturbation = v;
    }
    g.validate()?;
    let rule_seed = c.rule_seed.unwrap_or(g.seed);
    let rule = SyntheticRule::sample(c.rule, rule_seed);
    let data = generate_dataset(&rule, g)?;
    run.manifest.seeds = vec![g.seed, rule_seed];
    let mut written = Table::new(["file", "pairs", "label_A"]);
    let mut emit = |name: &str, d: &Dataset| -> Result<()> {
        write_dataset(d, run.out.file(name))?;
        let a = d.pairs.iter().filter(|p| p.label == Label::A).count();
        written.row([name.to_string(), d.len().to_string(), a.to_string()]);
        Ok(())
    };
    match &c.splits {
        None => emit("synth.jsonl", &data)?,
        Some(sizes) => {
            let mut start = 0;
            for (name, split, size) in [
                ("train.jsonl", Split::Train, sizes[0]),
                ("val.jsonl", Split::Validation, sizes[1]),
                ("test.jsonl", Split::Test, sizes[2]),
            ] {
                emit(name, &Dataset::new(split, data.pairs[start..start + size].to_vec()))?;
                start += size;
            }
        }
    }
    let sidecar = SynthSidecar { rule: rule.clone(), generator: run.cfg.generator.clone() };
    run.out.write_json("rule.json", &sidecar)?;
    let text = format!("rule {} (rule seed {rule_seed})\n\n{}", family_name(c.rule), written.render());
    run.finish(&text)
}

fn family_name(f: RuleFamily) -> &'static str {
    match f {
        RuleFamily::DeprelSet => "deprel-set",
        RuleFamily::PosSet => "pos-set",
        RuleFamily::DepthLimit => "depth-limit",
    }
}

fn read_eval(run: &mut Run, role: &str, path: &Path) -> Result<EvalReport> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {role} report {}", path.display()))?;
    let report: EvalReport =
        serde_json::from_str(&text).with_context(|| format!("parsing {role} report {}", path.display()))?;
    ensure!(!report.items.is_empty(), "{role} report {} has no items", path.display());
    run.manifest.add_input(role, path)?;
    Ok(report)
}

/// Reorders `y` to follow the item order of `x`; both must cover the same ids.
fn align<'a>(x: &'a EvalReport, y: &'a EvalReport) -> Result<Vec<(&'a csntax_core::train::EvalItem, &'a csntax_core::train::EvalItem)>> {
    ensure!(
        x.items.len() == y.items.len(),
        "reports cover different items ({} vs {})",
        x.items.len(),
        y.items.len()
    );
    let by_id: HashMap<&str, _> = y.items.iter().map(|i| (i.id.as_str(), i)).collect();
    x.items
        .iter()
        .map(|i| match by_id.get(i.id.as_str()) {
            Some(j) => Ok((i, *j)),
            None => bail!("item `{}` is missing from the second report", i.id),
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CompareOutput {
    pub x: PathBuf,
    pub y: PathBuf,
    pub accuracy_x: f64,
    pub accuracy_y: f64,
    pub n_x: usize,
    pub n_y: usize,
    pub result: PermutationReport,
}

fn cmd_compare(mut run: Run, x: &Path, y: &Path, paired: bool) -> Result<()> {
    let rx = read_eval(&mut run, "x", x)?;
    let ry = read_eval(&mut run, "y", y)?;
    let result = if paired {
        let (bx, by): (Vec<bool>, Vec<bool>) = align(&rx, &ry)?.into_iter().map(|(a, b)| (a.correct, b.correct)).unzip();
        paired_permutation_test(&bx, &by, &run.cfg.stats)?
    } else {
        unpaired_permutation_test(&rx.correctness(), &ry.correctness(), &run.cfg.stats)?
    };
    run.manifest.seeds = vec![run.cfg.stats.seed];
    let text = format!(
        "{} permutation test, R = {}, seed {}\nA(x) = {}  A(y) = {}  difference {:+.4}\np = {:.4}  {} at alpha = {}\n",
        if paired { "paired" } else { "unpaired" },
        result.replications,
        result.seed,
        pct(rx.accuracy),
        pct(ry.accuracy),
        result.statistic,
        result.p_value,
        result.verdict(),
        result.alpha
    );
    run.out.write_json(
        "compare.json",
        &CompareOutput {
            x: x.to_path_buf(),
            y: y.to_path_buf(),
            accuracy_x: rx.accuracy,
            accuracy_y: ry.accuracy,
            n_x: rx.items.len(),
            n_y: ry.items.len(),
            result,
        },
    )?;
    run.finish(&text)
}

fn cmd_kappa(mut run: Run, x: &Path, y: &Path) -> Result<()> {
    let rx = read_eval(&mut run, "x", x)?;
    let ry = read_eval(&mut run, "y", y)?;
    let pairs = align(&rx, &ry)?;
    let choose = |i: &csntax_core::train::EvalItem| Logits(i.logits).decision().unwrap_or_else(|| i.label.other());
    let (cx, cy): (Vec<Label>, Vec<Label>) = pairs.into_iter().map(|(a, b)| (choose(a), choose(b))).unzip();
    let report: AgreementReport = cohens_kappa(&cx, &cy)?;
    let text = format!(
        "kappa = {:.4}  (p_o = {:.4}, p_e = {:.4}, N = {}, n = {}, k = {})\n",
        report.kappa, report.observed, report.chance, report.n_items, report.n_raters, report.n_categories
    );
    run.out.write_json("kappa.json", &report)?;
    run.finish(&text)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Correlation {
    /// Spearman rank correlation, absent when undefined.
    pub rho: Option<f64>,
    pub n_items: usize,
    pub note: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CalibrateOutput {
    pub temperature: f64,
    pub val_nll_before: f64,
    pub val_nll_after: f64,
    pub test_nll_before: Option<f64>,
    pub test_nll_after: Option<f64>,
    /// Margins of raw logits against human agreement.
    pub raw: Correlation,
    /// Margins of temperature-scaled logits against human agreement.
    pub scaled: Correlation,
}

fn correlation(report: &EvalReport, temperature: f64) -> Correlation {
    let (margins, agreement): (Vec<f64>, Vec<f64>) = report
        .items
        .iter()
        .filter_map(|i| i.human_agreement.map(|h| (Logits(i.logits).scaled(1.0 / temperature).margin(), h)))
        .unzip();
    match confidence_agreement_correlation(&margins, &agreement) {
        Ok(rho) => Correlation { rho: Some(rho), n_items: margins.len(), note: None },
        Err(e) => Correlation { rho: None, n_items: margins.len(), note: Some(e.to_string()) },
    }
}

fn cmd_calibrate(mut run: Run, val: &Path, test: Option<&Path>) -> Result<()> {
    let rv = read_eval(&mut run, "validation", val)?;
    let rt = test.map(|p| read_eval(&mut run, "test", p)).transpose()?;
    let logits = |r: &EvalReport| -> (Vec<Logits>, Vec<Label>) { r.items.iter().map(|i| (Logits(i.logits), i.label)).unzip() };
    let (lv, yv) = logits(&rv);
    let temperature = temperature_scale(&lv, &yv)?;
    let target = rt.as_ref().unwrap_or(&rv);
    let test_nll = rt.as_ref().map(|r| {
        let (l, y) = logits(r);
        (scaled_nll(&l, &y, 1.0), scaled_nll(&l, &y, temperature))
    });
    let out = CalibrateOutput {
        temperature,
        val_nll_before: scaled_nll(&lv, &yv, 1.0),
        val_nll_after: scaled_nll(&lv, &yv, temperature),
        test_nll_before: test_nll.map(|t| t.0),
        test_nll_after: test_nll.map(|t| t.1),
        raw: correlation(target, 1.0),
        scaled: correlation(target, temperature),
    };
    let rho = |c: &Correlation| match (c.rho, &c.note) {
        (Some(r), _) => format!("{r:.4} (n = {})", c.n_items),
        (None, Some(n)) => format!("undefined: {n}"),
        (None, None) => "undefined".to_string(),
    };
    let text = format!(
        "temperature {:.4}\nvalidation NLL {:.4} -> {:.4}\nconfidence vs agreement, raw: {}\nconfidence vs agreement, scaled: {}\n",
        out.temperature,
        out.val_nll_before,
        out.val_nll_after,
        rho(&out.raw),
        rho(&out.scaled)
    );
    run.out.write_json("calibrate.json", &out)?;
    run.finish(&text)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CurveOutput {
    pub subset_seed: u64,
    pub points: Vec<CurvePoint>,
}

fn cmd_curve(mut run: Run, c: &CurveCmd) -> Result<()> {
    let train_set = run.load("train", &c.train, Split::Train)?;
    let val = run.load("validation", &c.val, Split::Validation)?;
    let test = run.load("test", &c.test, Split::Test)?;
    let started = Instant::now();
    let points = learning_curve(&train_set, &val, &test, &c.sizes, run.cfg.seed, &run.cfg.model, &run.cfg.train)?;
    run.manifest.time("curve", started.elapsed().as_secs_f64());
    run.manifest.seeds = std::iter::once(run.cfg.seed).chain(run.cfg.train.seeds.iter().copied()).collect();
    let mut tsv = String::from("size\taccuracy\tstd\n");
    let mut table = Table::new(["size", "A", "std"]);
    for p in &points {
        tsv += &format!("{}\t{}\t{}\n", p.size, p.accuracy, p.std);
        table.row([p.size.to_string(), pct(p.accuracy), pct(p.std)]);
    }
    run.out.write_text("curve.tsv", &tsv)?;
    run.out.write_json("curve.json", &CurveOutput { subset_seed: run.cfg.seed, points })?;
    run.finish(&table.render())
}
