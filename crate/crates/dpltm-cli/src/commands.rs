//! The five subcommands: simulate, fit, infer, evaluate, benchmark.

use crate::config::{EvaluateSection, FitSection, Horizon, InferSection, RunConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::Manifest;
use anyhow::{anyhow, Context};
use dpltm::data::SurvivalDataset;
use dpltm::error_family::ErrorModel;
use dpltm::inference::{estimate_directions, information_bound, wald_report, InferenceReport};
use dpltm::metrics::{c_index, ici, percentile_times, relative_error_g, wise_h, EvalReport};
use dpltm::model::{DpltmParams, ModelFile};
use dpltm::simulate::{generate_replicate, h0, SimDesign, TruthRecords};
use dpltm::train::{grid_search, split, FitResult, GridEntry, TrainConfig};
use rayon::prelude::*;
use serde_json::json;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Flags shared by every subcommand.
pub struct GlobalOpts {
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub quiet: bool,
}

impl GlobalOpts {
    fn ensure_out_dir(&self) -> CliResult<()> {
        std::fs::create_dir_all(&self.out)
            .with_context(|| format!("cannot create output directory {}", self.out.display()))
            .map_err(CliError::Data)
    }
}

/// SplitMix64 step, used to derive independent sub-seeds from a master seed.
pub fn derive_seed(master: u64, tag: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(tag.wrapping_mul(0x9E3779B97F4A7C15))
        .wrapping_add(index.wrapping_mul(0xBF58476D1CE4E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

// ---------------------------------------------------------------- simulate

pub fn cmd_simulate(config: &RunConfig, config_text: &str, opts: &GlobalOpts) -> CliResult<()> {
    let section = config
        .simulate
        .as_ref()
        .ok_or_else(|| CliError::Config(anyhow!("config has no [simulate] section")))?;
    let mut design = section.design().map_err(CliError::Config)?;
    if let Some(seed) = opts.seed {
        design.seed = seed;
    }
    opts.ensure_out_dir()?;

    let (data, truth) = dpltm::simulate::generate(&design)?;
    let data_path = opts.out.join("dataset.csv");
    let truth_path = opts.out.join("truth.csv");
    data.write_csv_path(&data_path)?;
    truth.write_csv_path(&truth_path)?;

    let mut manifest = Manifest::new("simulate", Some(config_text), design.seed);
    manifest.inputs = json!({ "design": design });
    manifest.outputs = vec!["dataset.csv".into(), "truth.csv".into()];
    manifest.extra = json!({
        "realized_censoring_rate": data.censoring_rate(),
        "rng": "chacha12+ziggurat",
    });
    manifest.write(&opts.out).map_err(CliError::Data)?;

    if !opts.quiet {
        println!(
            "simulated {} records (censoring rate {:.4}) -> {}",
            data.len(),
            data.censoring_rate(),
            data_path.display()
        );
    }
    Ok(())
}

// --------------------------------------------------------------------- fit

/// Outcome of fitting all r candidates: the chosen model and the flattened
/// leaderboard.
pub struct SelectionOutcome {
    pub selected_r: f64,
    pub result: FitResult<f64>,
    pub leaderboard: Vec<LeaderboardRow>,
    pub tie_broken: bool,
}

#[derive(Debug, Clone)]
pub struct LeaderboardRow {
    pub r: f64,
    pub entry: GridEntry<f64>,
    pub config: TrainConfig<f64>,
    pub selected: bool,
}

/// Run the grid search for every r candidate and select the best validation
/// log-likelihood; exact ties break toward smaller r.
pub fn fit_with_r_selection(
    train: &SurvivalDataset<f64>,
    validation: &SurvivalDataset<f64>,
    section: &FitSection,
    seed: u64,
    quiet: bool,
) -> CliResult<SelectionOutcome> {
    if section.r_candidates.is_empty() {
        return Err(CliError::Config(anyhow!("fit.r_candidates is empty")));
    }
    let mut grid = section.grid(train.len(), seed).map_err(CliError::Config)?;
    for (index, config) in grid.iter_mut().enumerate() {
        config.seed = derive_seed(seed, 7, index as u64);
    }

    let mut best: Option<(f64, FitResult<f64>)> = None;
    let mut tie_broken = false;
    let mut leaderboard = Vec::new();
    for (r_idx, &r) in section.r_candidates.iter().enumerate() {
        let error = ErrorModel::new(r)?;
        let mut r_grid = grid.clone();
        for (index, config) in r_grid.iter_mut().enumerate() {
            config.seed = derive_seed(seed, 100 + r_idx as u64, index as u64);
        }
        let (result, board) = grid_search(train, validation, error, &r_grid)?;
        if !quiet {
            for entry in &board {
                println!(
                    "fit\tr={r}\tgrid={}\tval_loglik={:.4}\tbest_epoch={}",
                    entry.index, entry.val_loglik, entry.best_epoch
                );
            }
        }
        for entry in &board {
            leaderboard.push(LeaderboardRow {
                r,
                config: r_grid[entry.index],
                entry: entry.clone(),
                selected: false,
            });
        }
        let replace = match &best {
            None => true,
            Some((best_r, b)) => {
                if result.best_val_loglik > b.best_val_loglik {
                    true
                } else if result.best_val_loglik == b.best_val_loglik && r < *best_r {
                    tie_broken = true;
                    true
                } else {
                    false
                }
            }
        };
        if replace {
            best = Some((r, result));
        }
    }
    let (selected_r, result) = best.expect("nonempty candidate list");
    if tie_broken && !quiet {
        println!("fit\ttie on validation log-likelihood broken toward smaller r = {selected_r}");
    }
    // Mark the winning leaderboard row.
    let mut best_row = 0;
    for (i, row) in leaderboard.iter().enumerate() {
        if row.r == selected_r && row.entry.selected {
            best_row = i;
        }
    }
    leaderboard[best_row].selected = true;
    Ok(SelectionOutcome {
        selected_r,
        result,
        leaderboard,
        tie_broken,
    })
}

fn write_leaderboard(path: &Path, rows: &[LeaderboardRow]) -> CliResult<()> {
    let mut out = String::from(
        "r,grid_index,epochs,learning_rate,hidden_layers,hidden_width,dropout,interior_knots,val_loglik,best_epoch,epochs_run,selected\n",
    );
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            row.r,
            row.entry.index,
            row.config.epochs,
            row.config.learning_rate,
            row.config.hidden_layers,
            row.config.hidden_width,
            row.config.dropout_rate,
            row.config.interior_knots,
            row.entry.val_loglik,
            row.entry.best_epoch,
            row.entry.epochs_run,
            row.selected,
        ));
    }
    std::fs::write(path, out)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(CliError::Data)
}

pub fn cmd_fit(
    config: &RunConfig,
    config_text: &str,
    data_path: &Path,
    opts: &GlobalOpts,
) -> CliResult<()> {
    let section = config
        .fit
        .as_ref()
        .ok_or_else(|| CliError::Config(anyhow!("config has no [fit] section")))?;
    let seed = opts.seed.unwrap_or(section.seed);
    opts.ensure_out_dir()?;

    let data = SurvivalDataset::<f64>::read_csv_path(data_path)?;
    let parts = split(&data, &section.split, derive_seed(seed, 2, 0))?;
    if !opts.quiet {
        let sizes: Vec<usize> = parts.iter().map(|p| p.len()).collect();
        println!("fit\tsplit sizes {sizes:?}");
    }
    let outcome = fit_with_r_selection(&parts[0], &parts[1], section, seed, opts.quiet)?;

    if !opts.quiet {
        for (epoch, (t, v)) in outcome
            .result
            .train_curve
            .iter()
            .zip(&outcome.result.val_curve)
            .enumerate()
        {
            println!("progress\t{epoch}\t{t}\t{v}");
        }
    }

    let metadata = json!({
        "selected_r": outcome.selected_r,
        "val_loglik": outcome.result.best_val_loglik,
        "best_epoch": outcome.result.best_epoch,
        "train_size": parts[0].len(),
        "validation_size": parts[1].len(),
        "config": outcome.result.config,
        "tie_broken_toward_smaller_r": outcome.tie_broken,
    });
    let model_path = opts.out.join("model.json");
    ModelFile::new(outcome.result.params.clone(), metadata).save(&model_path)?;
    write_leaderboard(&opts.out.join("leaderboard.csv"), &outcome.leaderboard)?;

    let mut manifest = Manifest::new("fit", Some(config_text), seed);
    manifest.inputs = json!({ "data": data_path.display().to_string(), "rows": data.len() });
    manifest.outputs = vec!["model.json".into(), "leaderboard.csv".into()];
    manifest.extra = json!({
        "selected_r": outcome.selected_r,
        "val_loglik": outcome.result.best_val_loglik,
    });
    manifest.write(&opts.out).map_err(CliError::Data)?;

    if !opts.quiet {
        println!(
            "selected r = {} (validation log-likelihood {:.4}) -> {}",
            outcome.selected_r,
            outcome.result.best_val_loglik,
            model_path.display()
        );
    }
    Ok(())
}

// ------------------------------------------------------------------- infer

pub fn run_inference(
    params: &DpltmParams<f64>,
    data: &SurvivalDataset<f64>,
    section: &InferSection,
    seed: u64,
) -> CliResult<InferenceReport<f64>> {
    let direction_config = section.direction_config(seed);
    let directions = estimate_directions(params, data, &direction_config)?;
    let info = information_bound(params, data, &directions)?;
    Ok(wald_report(&params.beta, &info, data.len()))
}

pub fn cmd_infer(
    config: Option<&RunConfig>,
    config_text: Option<&str>,
    model_path: &Path,
    data_path: &Path,
    opts: &GlobalOpts,
) -> CliResult<()> {
    let section = config.and_then(|c| c.infer.clone()).unwrap_or_default();
    let seed = opts.seed.unwrap_or(section.seed);
    opts.ensure_out_dir()?;

    let model = ModelFile::<f64>::load(model_path)?;
    let data = SurvivalDataset::<f64>::read_csv_path(data_path)?;
    let report = run_inference(&model.params, &data, &section, seed)?;

    let names: Vec<String> = (1..=model.params.p()).map(|j| format!("beta{j}")).collect();
    let table = report.to_delimited(&names);
    std::fs::write(opts.out.join("inference.tsv"), &table)
        .context("cannot write inference.tsv")
        .map_err(CliError::Data)?;
    let json_report = serde_json::to_string_pretty(&report)
        .context("cannot serialize inference report")
        .map_err(CliError::Data)?;
    std::fs::write(opts.out.join("inference.json"), json_report)
        .context("cannot write inference.json")
        .map_err(CliError::Data)?;

    let mut manifest = Manifest::new("infer", config_text, seed);
    manifest.inputs = json!({
        "model": model_path.display().to_string(),
        "data": data_path.display().to_string(),
    });
    manifest.outputs = vec!["inference.tsv".into(), "inference.json".into()];
    manifest.write(&opts.out).map_err(CliError::Data)?;

    if !opts.quiet {
        print!("{table}");
    }
    Ok(())
}

// ---------------------------------------------------------------- evaluate

/// Resolve the configured horizons against the observed event times.
fn resolve_horizons(
    section: &EvaluateSection,
    data: &SurvivalDataset<f64>,
) -> CliResult<Vec<(String, f64)>> {
    let mut out = Vec::new();
    let mut percentiles: Option<(f64, f64, f64)> = None;
    for horizon in &section.t0 {
        match horizon {
            Horizon::Time(t) => out.push((format!("t={t}"), *t)),
            Horizon::Label(label) => {
                if percentiles.is_none() {
                    percentiles = Some(percentile_times(data.times(), data.status())?);
                }
                let (t25, t50, t75) = percentiles.unwrap();
                let t = match label.as_str() {
                    "t25" => t25,
                    "t50" => t50,
                    "t75" => t75,
                    other => {
                        return Err(CliError::Config(anyhow!(
                            "unknown horizon label {other:?} (expected t25, t50, t75, or a time)"
                        )))
                    }
                };
                out.push((label.clone(), t));
            }
        }
    }
    Ok(out)
}

/// Compute the evaluation report for a fitted model on a dataset, with
/// optional ground truth for RE and WISE.
pub fn evaluate_model(
    params: &DpltmParams<f64>,
    data: &SurvivalDataset<f64>,
    truth: Option<(&TruthRecords<f64>, Option<&SimDesign<f64>>)>,
    section: &EvaluateSection,
) -> CliResult<EvalReport<f64>> {
    let scores: Vec<f64> = data
        .records()
        .map(|rec| params.risk_score(&rec))
        .collect::<dpltm::Result<_>>()?;
    let cidx = c_index(&scores, data.times(), data.status())?;

    let mut ici_map = BTreeMap::new();
    for (label, t0) in resolve_horizons(section, data)? {
        let p_hat: Vec<f64> = data
            .records()
            .map(|rec| params.predict_event_prob(&rec, t0))
            .collect::<dpltm::Result<_>>()?;
        ici_map.insert(label, ici(&p_hat, data.times(), data.status(), t0)?);
    }

    let mut re_g = None;
    let mut wise = None;
    if let Some((truth, design)) = truth {
        if truth.len() != data.len() {
            return Err(CliError::Data(anyhow!(
                "truth file has {} rows, dataset has {}",
                truth.len(),
                data.len()
            )));
        }
        let g_hat: Vec<f64> = data
            .records()
            .map(|rec| params.g_centered(&rec.x.to_owned()))
            .collect::<dpltm::Result<_>>()?;
        re_g = Some(relative_error_g(&g_hat, &truth.g0)?);

        if let Some(design) = design {
            let r = design.r;
            let t_max = data
                .times()
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            wise = Some(wise_h(
                |t| params.transform_adjusted(t),
                |t| h0(r, t).unwrap_or(f64::NEG_INFINITY),
                t_max,
                section.wise_grid_size,
            )?);
        }
    }

    Ok(EvalReport {
        re_g,
        wise_h: wise,
        c_index: cidx,
        ici: ici_map,
    })
}

/// Look for a simulation manifest next to the truth file to recover the
/// design (needed to reconstruct the true transformation for WISE).
fn design_near(truth_path: &Path) -> Option<SimDesign<f64>> {
    let manifest_path = truth_path.parent()?.join("manifest.json");
    let text = std::fs::read_to_string(manifest_path).ok()?;
    let value: serde_json::Value = serde_json::from_str(&text).ok()?;
    serde_json::from_value(value.get("inputs")?.get("design")?.clone()).ok()
}

fn eval_report_csv(report: &EvalReport<f64>) -> String {
    let mut header = vec![
        "re_g".to_string(),
        "wise_h".to_string(),
        "c_index".to_string(),
    ];
    let mut row = vec![
        report.re_g.map(|v| v.to_string()).unwrap_or_default(),
        report.wise_h.map(|v| v.to_string()).unwrap_or_default(),
        report.c_index.to_string(),
    ];
    for (label, value) in &report.ici {
        header.push(format!("ici_{label}"));
        row.push(value.to_string());
    }
    format!("{}\n{}\n", header.join(","), row.join(","))
}

pub fn cmd_evaluate(
    config: Option<&RunConfig>,
    config_text: Option<&str>,
    model_path: &Path,
    data_path: &Path,
    truth_path: Option<&Path>,
    opts: &GlobalOpts,
) -> CliResult<()> {
    let section = config.and_then(|c| c.evaluate.clone()).unwrap_or_default();
    opts.ensure_out_dir()?;

    let model = ModelFile::<f64>::load(model_path)?;
    let data = SurvivalDataset::<f64>::read_csv_path(data_path)?;
    let truth = truth_path
        .map(TruthRecords::<f64>::read_csv_path)
        .transpose()?;
    let design = truth_path.and_then(design_near);
    let report = evaluate_model(
        &model.params,
        &data,
        truth.as_ref().map(|t| (t, design.as_ref())),
        &section,
    )?;

    let json_report = serde_json::to_string_pretty(&report)
        .context("cannot serialize evaluation report")
        .map_err(CliError::Data)?;
    std::fs::write(opts.out.join("evaluation.json"), json_report)
        .context("cannot write evaluation.json")
        .map_err(CliError::Data)?;
    std::fs::write(opts.out.join("evaluation.csv"), eval_report_csv(&report))
        .context("cannot write evaluation.csv")
        .map_err(CliError::Data)?;

    let mut manifest = Manifest::new("evaluate", config_text, opts.seed.unwrap_or(0));
    manifest.inputs = json!({
        "model": model_path.display().to_string(),
        "data": data_path.display().to_string(),
        "truth": truth_path.map(|p| p.display().to_string()),
    });
    manifest.outputs = vec!["evaluation.json".into(), "evaluation.csv".into()];
    manifest.write(&opts.out).map_err(CliError::Data)?;

    if !opts.quiet {
        println!("c_index = {:.4}", report.c_index);
        for (label, value) in &report.ici {
            println!("ici[{label}] = {value:.4}");
        }
        if let Some(re) = report.re_g {
            println!("re_g = {re:.4}");
        }
        if let Some(w) = report.wise_h {
            println!("wise_h = {w:.4}");
        }
    }
    Ok(())
}

// --------------------------------------------------------------- benchmark

#[derive(Debug, Clone)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    pub selected_r: f64,
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub covered: Vec<bool>,
    pub report: EvalReport<f64>,
    pub censoring_rate: f64,
    pub val_loglik: f64,
    pub best_epoch: usize,
}

/// One full replicate: simulate, split, fit (with r selection), infer, and
/// evaluate on an independent test draw.
pub fn run_replicate(
    replicate: usize,
    design: &SimDesign<f64>,
    n_test: usize,
    fit_section: &FitSection,
    infer_section: &InferSection,
    eval_section: &EvaluateSection,
    master_seed: u64,
) -> CliResult<ReplicateOutcome> {
    let rep = replicate as u64;
    let (data, _) = generate_replicate(design, rep)?;
    let test_design = SimDesign {
        n: n_test,
        ..design.clone()
    };
    // Test streams live in a disjoint block of the stream space.
    let (test, truth) = generate_replicate(&test_design, (1u64 << 32) + rep)?;

    if fit_section.split.len() != 2 {
        return Err(CliError::Config(anyhow!(
            "benchmark expects a two-way fit.split (the test sample is simulated separately)"
        )));
    }
    let parts = split(&data, &fit_section.split, derive_seed(master_seed, 2, rep))?;
    let outcome = fit_with_r_selection(
        &parts[0],
        &parts[1],
        fit_section,
        derive_seed(master_seed, 1, rep),
        true,
    )?;
    let params = &outcome.result.params;

    let inference = run_inference(
        params,
        &parts[0],
        infer_section,
        derive_seed(master_seed, 3, rep),
    )?;
    let covered: Vec<bool> = inference
        .coefficients
        .iter()
        .zip(&design.beta0)
        .map(|(c, &b0)| c.ci_low <= b0 && b0 <= c.ci_high)
        .collect();

    let report = evaluate_model(params, &test, Some((&truth, Some(design))), eval_section)?;

    Ok(ReplicateOutcome {
        replicate,
        selected_r: outcome.selected_r,
        beta: params.beta.to_vec(),
        se: inference.coefficients.iter().map(|c| c.std_error).collect(),
        covered,
        report,
        censoring_rate: data.censoring_rate(),
        val_loglik: outcome.result.best_val_loglik,
        best_epoch: outcome.result.best_epoch,
    })
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Run the benchmark; returns the number of failed replicates.
pub fn cmd_benchmark(config: &RunConfig, config_text: &str, opts: &GlobalOpts) -> CliResult<usize> {
    let bench = config
        .benchmark
        .as_ref()
        .ok_or_else(|| CliError::Config(anyhow!("config has no [benchmark] section")))?;
    let sim = config
        .simulate
        .as_ref()
        .ok_or_else(|| CliError::Config(anyhow!("benchmark needs a [simulate] section")))?;
    let fit_section = config.fit.clone().unwrap_or_default();
    let infer_section = config.infer.clone().unwrap_or_default();
    let eval_section = config.evaluate.clone().unwrap_or_default();
    if bench.replications == 0 {
        return Err(CliError::Config(anyhow!(
            "benchmark.replications must be positive"
        )));
    }
    let mut design = sim.design().map_err(CliError::Config)?;
    if let Some(seed) = opts.seed {
        design.seed = seed;
    }
    let master_seed = design.seed;
    opts.ensure_out_dir()?;

    let threads = opts.threads.unwrap_or(bench.threads);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("cannot build worker pool")
        .map_err(CliError::Config)?;

    let results: Vec<Result<ReplicateOutcome, CliError>> = pool.install(|| {
        (0..bench.replications)
            .into_par_iter()
            .map(|i| {
                run_replicate(
                    i,
                    &design,
                    bench.n_test,
                    &fit_section,
                    &infer_section,
                    &eval_section,
                    master_seed,
                )
            })
            .collect()
    });

    // Per-replicate CSV plus a failures file; aggregation over successes.
    let p = design.beta0.len();
    let ici_labels: Vec<String> = results
        .iter()
        .find_map(|r| r.as_ref().ok())
        .map(|o| o.report.ici.keys().cloned().collect())
        .unwrap_or_default();

    let mut rep_csv = String::from("replicate,selected_r");
    for j in 1..=p {
        rep_csv.push_str(&format!(",beta{j},se{j},covered{j}"));
    }
    rep_csv.push_str(",re_g,wise_h,c_index");
    for label in &ici_labels {
        rep_csv.push_str(&format!(",ici_{label}"));
    }
    rep_csv.push_str(",censoring_rate,val_loglik,best_epoch\n");

    let mut failures = Vec::new();
    let mut ok_rows = Vec::new();
    for (i, result) in results.iter().enumerate() {
        match result {
            Ok(o) => {
                rep_csv.push_str(&format!("{},{}", o.replicate, o.selected_r));
                for j in 0..p {
                    rep_csv.push_str(&format!(",{},{},{}", o.beta[j], o.se[j], o.covered[j]));
                }
                rep_csv.push_str(&format!(
                    ",{},{},{}",
                    o.report.re_g.map(|v| v.to_string()).unwrap_or_default(),
                    o.report.wise_h.map(|v| v.to_string()).unwrap_or_default(),
                    o.report.c_index
                ));
                for label in &ici_labels {
                    rep_csv.push_str(&format!(",{}", o.report.ici[label]));
                }
                rep_csv.push_str(&format!(
                    ",{},{},{}\n",
                    o.censoring_rate, o.val_loglik, o.best_epoch
                ));
                ok_rows.push(o.clone());
            }
            Err(e) => {
                failures.push(format!(
                    "{},{},{}\n",
                    i,
                    derive_seed(master_seed, 1, i as u64),
                    e
                ));
            }
        }
    }
    std::fs::write(opts.out.join("replicates.csv"), rep_csv)
        .context("cannot write replicates.csv")
        .map_err(CliError::Data)?;
    if !failures.is_empty() {
        let mut text = String::from("replicate,fit_seed,error\n");
        for f in &failures {
            text.push_str(f);
        }
        std::fs::write(opts.out.join("failures.csv"), text)
            .context("cannot write failures.csv")
            .map_err(CliError::Data)?;
    }

    // Aggregate row mirroring the simulation tables: bias and SD per linear
    // coefficient, CI coverage, and mean/SD of every evaluation metric.
    let mut agg_header = vec!["replications".to_string(), "failures".to_string()];
    let mut agg_row = vec![
        format!("{}", bench.replications),
        format!("{}", failures.len()),
    ];
    for j in 0..p {
        let estimates: Vec<f64> = ok_rows.iter().map(|o| o.beta[j]).collect();
        let (mean, sd) = mean_sd(&estimates);
        let coverage = ok_rows.iter().filter(|o| o.covered[j]).count();
        agg_header.push(format!("bias_beta{}", j + 1));
        agg_row.push(format!("{}", mean - design.beta0[j]));
        agg_header.push(format!("sd_beta{}", j + 1));
        agg_row.push(format!("{sd}"));
        agg_header.push(format!("coverage_beta{}", j + 1));
        agg_row.push(format!("{coverage}"));
    }
    let push_stat =
        |header: &mut Vec<String>, row: &mut Vec<String>, name: &str, values: Vec<f64>| {
            let (mean, sd) = mean_sd(&values);
            header.push(format!("{name}_mean"));
            row.push(format!("{mean}"));
            header.push(format!("{name}_sd"));
            row.push(format!("{sd}"));
        };
    push_stat(
        &mut agg_header,
        &mut agg_row,
        "re_g",
        ok_rows.iter().filter_map(|o| o.report.re_g).collect(),
    );
    push_stat(
        &mut agg_header,
        &mut agg_row,
        "wise_h",
        ok_rows.iter().filter_map(|o| o.report.wise_h).collect(),
    );
    push_stat(
        &mut agg_header,
        &mut agg_row,
        "c_index",
        ok_rows.iter().map(|o| o.report.c_index).collect(),
    );
    for label in &ici_labels {
        push_stat(
            &mut agg_header,
            &mut agg_row,
            &format!("ici_{label}"),
            ok_rows.iter().map(|o| o.report.ici[label]).collect(),
        );
    }
    push_stat(
        &mut agg_header,
        &mut agg_row,
        "censoring_rate",
        ok_rows.iter().map(|o| o.censoring_rate).collect(),
    );
    let agg_csv = format!("{}\n{}\n", agg_header.join(","), agg_row.join(","));
    std::fs::write(opts.out.join("aggregate.csv"), agg_csv)
        .context("cannot write aggregate.csv")
        .map_err(CliError::Data)?;

    let mut manifest = Manifest::new("benchmark", Some(config_text), master_seed);
    manifest.inputs =
        json!({ "design": design, "replications": bench.replications, "n_test": bench.n_test });
    manifest.outputs = vec!["replicates.csv".into(), "aggregate.csv".into()];
    manifest.extra = json!({ "failures": failures.len() });
    manifest.write(&opts.out).map_err(CliError::Data)?;

    if !opts.quiet {
        let mut stdout = std::io::stdout().lock();
        let _ = writeln!(
            stdout,
            "benchmark: {} replicates, {} failures -> {}",
            bench.replications,
            failures.len(),
            opts.out.join("aggregate.csv").display()
        );
    }
    Ok(failures.len())
}
