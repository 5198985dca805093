use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dualscale::artifacts::{self, json_text, read_checked, read_summaries, summaries_text, write_file, OutputDir};
use dualscale::btrank::{fit_bt_ilsr, probability_matrix};
use dualscale::comparisons::{human_win_matrix, FramingFilter, WinMatrix};
use dualscale::config::PipelineConfig;
use dualscale::corpus;
use dualscale::pipeline::{self, ScaleFile};
use dualscale::pointwise::annotator_alpha;
use dualscale::rank_eval::TieRule;
use dualscale::reliability::{krippendorff_alpha, Level, ReliabilityGrid};
use dualscale::stats::{summarize_models, PredictionSummary};
use dualscale::{Error, Result};

/// Pointwise and pairwise validation of model predictions against human annotations.
#[derive(Parser)]
#[command(name = "dualscale", version)]
struct Cli {
    /// TOML config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Accept artifacts stamped with a different config hash.
    #[arg(long, global = true)]
    force: bool,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Settings that override the config file.
#[derive(Args)]
struct Overrides {
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Reference scorer (model or ensemble id).
    #[arg(long, global = true)]
    reference: Option<String>,
    #[arg(long, global = true)]
    reg: Option<f64>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    max_iter: Option<usize>,
    #[arg(long, global = true)]
    margin: Option<f64>,
    #[arg(long, global = true)]
    threshold: Option<f64>,
    #[arg(long, global = true)]
    intra: Option<usize>,
    #[arg(long, global = true)]
    inter: Option<usize>,
    #[arg(long, global = true)]
    baseline_samples: Option<usize>,
    /// Label exact 0.5 model predictions by a coin flip seeded with this value.
    #[arg(long, global = true)]
    tie_seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured stage and write all artifacts.
    Run {
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Per-model, per-argument summaries.
    Aggregate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Resolve ensembles and pool their members' repetitions.
    Ensemble {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        members_out: Option<PathBuf>,
    },
    /// Draw the bucketed pointwise sample from the reference scorer.
    SamplePointwise {
        #[arg(long, num_args = 1.., required = true)]
        summaries: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classification metrics and agreement on the pointwise annotations.
    PointwiseEval {
        #[arg(long, num_args = 1.., required = true)]
        summaries: Vec<PathBuf>,
        #[arg(long)]
        pointwise: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        agreement_out: Option<PathBuf>,
    },
    /// Krippendorff's alpha for a unit,rater,value table or pointwise annotations.
    Agreement {
        #[arg(long, conflicts_with = "pointwise", required_unless_present = "pointwise")]
        input: Option<PathBuf>,
        #[arg(long, default_value = "nominal")]
        level: Level,
        #[arg(long)]
        pointwise: Option<PathBuf>,
    },
    /// Stratified pair design over the reference scorer's deciles.
    SamplePairs {
        #[arg(long, num_args = 1.., required = true)]
        summaries: Vec<PathBuf>,
        /// Restrict items to those annotated here and report on the annotated pairs.
        #[arg(long)]
        pairwise: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        diagnostics_out: Option<PathBuf>,
    },
    /// Human and scorer win matrices over the pairwise items.
    WinMatrix {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        pairwise: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Fit Bradley-Terry strengths to one win matrix.
    FitBt {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        probabilities: Option<PathBuf>,
    },
    /// Compare every scorer's ranking with the human one on each pair subset.
    RankEval {
        /// Directory holding index.json and the matrix CSVs.
        #[arg(long)]
        matrices: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn effective_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let o = &cli.overrides;
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    if let Some(v) = &o.reference {
        cfg.reference = Some(v.clone());
    }
    if let Some(v) = o.reg {
        cfg.bt.reg = v;
    }
    if let Some(v) = o.tol {
        cfg.bt.tol = v;
    }
    if let Some(v) = o.max_iter {
        cfg.bt.max_iter = v;
    }
    if let Some(v) = o.margin {
        cfg.margin = v;
    }
    if let Some(v) = o.threshold {
        cfg.threshold = v;
    }
    if let Some(v) = o.intra {
        cfg.pairs.intra = v;
    }
    if let Some(v) = o.inter {
        cfg.pairs.inter = v;
    }
    if let Some(v) = o.baseline_samples {
        cfg.baseline_samples = v;
    }
    if let Some(seed) = o.tie_seed {
        cfg.tie_rule = TieRule::Random { seed };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_summaries(paths: &[PathBuf], hash: &str, force: bool) -> Result<Vec<PredictionSummary>> {
    let mut all = Vec::new();
    for p in paths {
        all.extend(read_summaries(p, hash, force)?);
    }
    Ok(all)
}

/// Scorers in report order: non-ensemble ids sorted, then ensembles in config order.
fn scorer_order(cfg: &PipelineConfig, summaries: &[PredictionSummary]) -> (Vec<String>, BTreeSet<String>) {
    let present: BTreeSet<String> = summaries.iter().map(|s| s.scorer_id.clone()).collect();
    let models: BTreeSet<String> = present.iter().filter(|s| cfg.ensemble(s).is_none()).cloned().collect();
    let mut order: Vec<String> = models.iter().cloned().collect();
    order.extend(
        cfg.ensembles
            .iter()
            .filter(|e| present.contains(&e.id))
            .map(|e| e.id.clone()),
    );
    (order, models)
}

fn reference(cfg: &PipelineConfig) -> Result<&str> {
    cfg.reference
        .as_deref()
        .ok_or_else(|| Error::Config("a reference scorer is required (--reference or `reference`)".into()))
}

fn read_grid(path: &Path, level: Level) -> Result<ReliabilityGrid> {
    let name = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let col = |c: &str| {
        header
            .iter()
            .position(|h| h == c)
            .ok_or_else(|| Error::invalid(format!("{name}: missing column {c}")))
    };
    let (u, r, v) = (col("unit")?, col("rater")?, col("value")?);
    let mut grid = ReliabilityGrid::new(level);
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let (unit, rater, value) = (&rec[u], &rec[r], &rec[v]);
        if value.is_empty() || value.eq_ignore_ascii_case("NA") {
            continue;
        }
        let previous = match level {
            Level::Nominal => grid.insert_label(unit, rater, value),
            Level::Ordinal => {
                let x: i64 = value
                    .parse()
                    .map_err(|_| Error::row(&name, line, format!("ordinal value {value:?} is not an integer")))?;
                grid.insert(unit, rater, x)
            }
        };
        if previous.is_some() {
            return Err(Error::row(
                &name,
                line,
                format!("duplicate value for ({unit}, {rater})"),
            ));
        }
    }
    Ok(grid)
}

fn run(cli: &Cli) -> Result<()> {
    let mut cfg = effective_config(cli)?;
    let hash = cfg.hash();
    let force = cli.force;
    match &cli.command {
        Command::Run { output_dir } => {
            if let Some(d) = output_dir {
                cfg.output_dir = d.clone();
            }
            let outcome = pipeline::run_pipeline(&cfg, force)?;
            println!(
                "wrote {} artifacts to {} (config {})",
                outcome.manifest.artifacts.len() + 1,
                outcome.output_dir.display(),
                outcome.config_hash
            );
        }
        Command::Aggregate { predictions, out } => {
            let records = corpus::read_predictions(predictions)?;
            let summaries = summarize_models(&records).map_err(|e| e.in_stage("aggregate"))?;
            write_file(out, &summaries_text(&hash, &summaries)?)?;
        }
        Command::Ensemble {
            predictions,
            out,
            members_out,
        } => {
            let records = corpus::read_predictions(predictions)?;
            let ensembles = pipeline::resolve_ensembles(&cfg, &records).map_err(|e| e.in_stage("ensemble"))?;
            let pooled = pipeline::ensemble_summaries(&ensembles, &records).map_err(|e| e.in_stage("ensemble"))?;
            write_file(out, &summaries_text(&hash, &pooled)?)?;
            if let Some(m) = members_out {
                write_file(m, &pipeline::ensembles_text(&hash, &ensembles)?)?;
            }
        }
        Command::SamplePointwise { summaries, out } => {
            let all = load_summaries(summaries, &hash, force)?;
            let sample = pipeline::sample_pointwise(&cfg, &all).map_err(|e| e.in_stage("sample-pointwise"))?;
            write_file(out, &pipeline::pointwise_sample_text(&hash, &sample)?)?;
        }
        Command::PointwiseEval {
            summaries,
            pointwise,
            out,
            agreement_out,
        } => {
            let all = load_summaries(summaries, &hash, force)?;
            let annotations = corpus::read_pointwise(pointwise)?;
            let (order, models) = scorer_order(&cfg, &all);
            let eval =
                pipeline::evaluate_pointwise(&all, &order, &models, reference(&cfg)?, &annotations, cfg.threshold)
                    .map_err(|e| e.in_stage("pointwise-eval"))?;
            write_file(out, &pipeline::pointwise_metrics_text(&hash, &eval)?)?;
            if let Some(a) = agreement_out {
                write_file(a, &pipeline::pointwise_agreement_text(&hash, &eval)?)?;
            }
        }
        Command::Agreement {
            input,
            level,
            pointwise,
        } => {
            let (alpha, units, raters, level) = if let Some(p) = pointwise {
                let annotations = corpus::read_pointwise(p)?;
                let all: BTreeSet<String> = annotations.iter().map(|a| a.argument_id.clone()).collect();
                let raters: BTreeSet<&str> = annotations.iter().map(|a| a.annotator_id.as_str()).collect();
                (
                    annotator_alpha(&annotations, &all)?,
                    all.len(),
                    raters.len(),
                    Level::Nominal,
                )
            } else {
                let grid = read_grid(input.as_deref().expect("clap enforces input"), *level)?;
                (krippendorff_alpha(&grid)?, grid.n_units(), grid.n_raters(), *level)
            };
            print!(
                "{}",
                json_text(
                    None,
                    &serde_json::json!({ "alpha": alpha, "level": level, "units": units, "raters": raters })
                )?
            );
        }
        Command::SamplePairs {
            summaries,
            pairwise,
            out,
            diagnostics_out,
        } => {
            let all = load_summaries(summaries, &hash, force)?;
            let reference = reference(&cfg)?;
            let design = match pairwise {
                Some(p) => {
                    let annotations = corpus::read_pairwise(p)?;
                    let items = pipeline::pairwise_items(&annotations);
                    let scores = pipeline::reference_scores(&all, reference, Some(&items))?;
                    let annotated = human_win_matrix(&annotations, &items, FramingFilter::Both)?.compared_pairs();
                    pipeline::design_pairs(&cfg, &scores, Some(&annotated))
                }
                None => pipeline::design_pairs(&cfg, &pipeline::reference_scores(&all, reference, None)?, None),
            }
            .map_err(|e| e.in_stage("sample-pairs"))?;
            write_file(out, &pipeline::pairs_text(&hash, &design.pairs)?)?;
            if let Some(d) = diagnostics_out {
                write_file(d, &json_text(Some(&hash), &design.diagnostics)?)?;
            }
        }
        Command::WinMatrix {
            predictions,
            pairwise,
            out_dir,
        } => {
            let records = corpus::read_predictions(predictions)?;
            let annotations = corpus::read_pairwise(pairwise)?;
            let ensembles = pipeline::resolve_ensembles(&cfg, &records).map_err(|e| e.in_stage("ensemble"))?;
            let scorers = pipeline::scorer_members(&records, &ensembles);
            let set =
                pipeline::build_matrices(&records, &scorers, &annotations).map_err(|e| e.in_stage("win-matrix"))?;
            let mut out = OutputDir::create(out_dir)?;
            pipeline::write_matrix_set(&mut out, &hash, &set, cfg.margin)?;
        }
        Command::FitBt {
            matrix,
            out,
            name,
            probabilities,
        } => {
            let text = read_checked(matrix, &hash, force)?;
            let wm = WinMatrix::read_csv(text.as_bytes(), &matrix.display().to_string())?;
            let scale = fit_bt_ilsr(&wm, &cfg.bt).map_err(|e| e.in_stage("fit-bt"))?;
            if !scale.converged {
                log::warn!("fit-bt: no convergence after {} iterations", scale.iterations);
            }
            let name = name.clone().unwrap_or_else(|| {
                matrix
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default()
            });
            write_file(
                out,
                &pipeline::scale_text(&hash, &ScaleFile::new(&name, &scale, &cfg.bt))?,
            )?;
            if let Some(p) = probabilities {
                let mut buf = format!("{}{hash}\n", artifacts::HASH_PREFIX).into_bytes();
                probability_matrix(&scale).write_csv(&mut buf)?;
                write_file(p, &String::from_utf8(buf).expect("csv output is utf-8"))?;
            }
        }
        Command::RankEval { matrices, out_dir } => {
            let set = pipeline::read_matrix_set(matrices, &hash, force)?;
            let (partition, report) = pipeline::evaluate_rankings(&cfg, &set).map_err(|e| e.in_stage("rank-eval"))?;
            let reference = reference(&cfg)?;
            let mut out = OutputDir::create(out_dir)?;
            out.write(
                "confidence.csv",
                &pipeline::confidence_text(&hash, &set, reference, &partition)?,
            )?;
            out.write("report.json", &pipeline::report_json_text(&hash, &report)?)?;
            out.write("report.csv", &pipeline::report_csv_text(&hash, &report)?)?;
            log::info!("rank-eval: {} rows", report.rows.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
