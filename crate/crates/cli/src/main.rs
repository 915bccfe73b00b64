//! `cnn-ids`: prep, train, eval, predict and bench subcommands.

mod manifest;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use cnn_ids::metrics::{
    argmax, compute_metrics, confusion, predict, predict_logits, timed_inference,
};
use cnn_ids::model_io::{read_model, write_model, LossRecord, ModelMetadata};
use cnn_ids::nn::{softmax, ModelParams};
use cnn_ids::pipeline::{
    clean, load_csv, load_csv_with, prepare, table_class_stats, write_class_stats, write_csv,
    ColumnEncoding, EncodeReport, EncodingMeta, PrepSchema,
};
use cnn_ids::rng::{derive_seed, SPLIT};
use cnn_ids::trainer::{train, TrainConfig};

use manifest::{manifest_path, Manifest};

const EXIT_OTHER: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERIC: u8 = 4;

/// Held-out inference time reported for the reference full-data run, shown
/// by `bench` for orientation only.
const REFERENCE_TEST_SECONDS: f64 = 3.94;

#[derive(Parser)]
#[command(
    name = "cnn-ids",
    version,
    about = "1D-CNN intrusion detection on tabular flow records"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clean a raw CSV and write class statistics.
    Prep(PrepArgs),
    /// Split prepared data, train, and write a model file.
    Train(TrainArgs),
    /// Evaluate a model on labelled data.
    Eval(EvalArgs),
    /// Predict classes for rows of a CSV.
    Predict(PredictArgs),
    /// Time repeated inference passes.
    Bench(BenchArgs),
}

#[derive(Args)]
struct PrepArgs {
    #[arg(long)]
    input: PathBuf,
    /// Schema TOML; defaults to the built-in Edge-IIoTset schema.
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    stats_out: PathBuf,
    #[arg(long, default_value = ",")]
    delimiter: char,
}

#[derive(Args)]
struct TrainArgs {
    /// Prepared (cleaned) CSV.
    #[arg(long)]
    data: PathBuf,
    /// Training config TOML.
    #[arg(long)]
    config: PathBuf,
    /// Schema TOML for label and categorical columns; defaults to the built-in schema.
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    model_out: PathBuf,
    /// Per-epoch loss CSV.
    #[arg(long)]
    report_out: PathBuf,
    /// Where to write the held-out raw rows for `eval`.
    #[arg(long)]
    test_out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Config override, `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    confusion_out: PathBuf,
    #[arg(long)]
    metrics_out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 5)]
    repeat: usize,
    /// Key/value timing report; the manifest is written next to it, or
    /// next to the model when omitted.
    #[arg(long)]
    report_out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        return Err(UsageError(format!("{what} file {} does not exist", path.display())).into());
    }
    Ok(())
}

fn load_schema(path: Option<&Path>) -> Result<PrepSchema> {
    match path {
        Some(p) => {
            require_file(p, "schema")?;
            Ok(PrepSchema::load(p)?)
        }
        None => Ok(PrepSchema::default()),
    }
}

fn delimiter_byte(c: char) -> Result<u8> {
    u8::try_from(c).ok().filter(u8::is_ascii).ok_or_else(|| {
        UsageError(format!("delimiter {c:?} is not a single ASCII character")).into()
    })
}

fn report_unseen(report: &EncodeReport) {
    for (col, n) in &report.unseen_categories {
        eprintln!("warning: {n} rows with unseen or missing category in column {col:?} (encoded as all zeros)");
    }
    if report.imputed_missing > 0 {
        eprintln!(
            "warning: {} missing numeric cells imputed",
            report.imputed_missing
        );
    }
}

fn model_encoding(meta: &ModelMetadata, path: &Path) -> Result<EncodingMeta> {
    meta.encoding.clone().ok_or_else(|| {
        cnn_ids::Error::Config(format!(
            "model {} carries no encoding metadata",
            path.display()
        ))
        .into()
    })
}

fn cmd_prep(a: &PrepArgs) -> Result<()> {
    let mut man = Manifest::start("prep");
    let schema = load_schema(a.schema.as_deref())?;
    let table = load_csv_with(&a.input, delimiter_byte(a.delimiter)?)?;
    let (cleaned, report) = clean(&table, &schema)?;
    println!("rows in: {}", report.rows_in);
    println!("columns dropped: {}", report.dropped_columns.len());
    if !report.absent_drop_columns.is_empty() {
        eprintln!(
            "warning: drop columns not present: {:?}",
            report.absent_drop_columns
        );
    }
    println!(
        "rows dropped for missing values: {}",
        report.rows_with_missing
    );
    println!("rows dropped as duplicates: {}", report.duplicate_rows);
    println!(
        "rows out: {} with {} columns",
        report.rows_out,
        cleaned.n_cols()
    );

    if cleaned.n_rows() > 0 {
        let meta = EncodingMeta::fit(&cleaned, &schema)?;
        let onehot = meta
            .columns
            .iter()
            .filter(|c| matches!(c, ColumnEncoding::Onehot { .. }))
            .count();
        println!(
            "encode preview: {} input columns ({} categorical) -> {} features, {} classes",
            meta.columns.len(),
            onehot,
            meta.n_features(),
            meta.num_classes()
        );
    }

    write_csv(&cleaned, &a.output)?;
    let stats = table_class_stats(&cleaned, &schema.label_column)?;
    write_class_stats(&stats, &a.stats_out)?;

    man.input("input", &a.input)
        .output("output", &a.output)
        .output("stats_out", &a.stats_out)
        .config("schema", &schema)?
        .result("rows_in", report.rows_in as i64)
        .result("rows_with_missing", report.rows_with_missing as i64)
        .result("duplicate_rows", report.duplicate_rows as i64)
        .result("rows_out", report.rows_out as i64);
    if let Some(s) = &a.schema {
        man.input("schema", s);
    }
    man.write(&manifest_path(&a.output))
}

fn resolve_config(a: &TrainArgs) -> Result<TrainConfig> {
    require_file(&a.config, "config")?;
    let mut cfg =
        TrainConfig::load(&a.config)?.with_overrides(a.overrides.iter().map(String::as_str))?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let mut man = Manifest::start("train");
    let cfg = resolve_config(a)?;
    let schema = load_schema(a.schema.as_deref())?;
    let table = load_csv(&a.data)?;
    let split = prepare(
        &table,
        &schema,
        1.0 - cfg.test_fraction,
        derive_seed(cfg.seed, SPLIT, 0),
    )?;
    report_unseen(&split.report);
    println!(
        "{} features, {} classes; {} training rows, {} held out",
        split.meta.n_features(),
        split.meta.num_classes(),
        split.train.len(),
        split.test.len()
    );

    let (params, report) = train(&split.train, &cfg)?;
    println!("{}", report.summary_line());

    let mut meta = ModelMetadata::for_params(&params).with_encoding(split.meta.clone());
    meta.seed = Some(cfg.seed);
    meta.train_config = Some(cfg.clone());
    meta.loss_history = report
        .epochs
        .iter()
        .map(|e| LossRecord {
            epoch: e.epoch,
            train_loss: e.train_loss,
            val_loss: e.val_loss,
        })
        .collect();
    write_model(&params, &meta, &a.model_out)?;
    let mut w = BufWriter::new(
        File::create(&a.report_out)
            .with_context(|| format!("creating {}", a.report_out.display()))?,
    );
    report.write_csv(&mut w)?;
    w.flush()?;
    if let Some(p) = &a.test_out {
        write_csv(&table.select_rows(&split.test_rows), p)?;
        man.output("test_out", p);
    }

    man.seed(cfg.seed)
        .input("data", &a.data)
        .input("config", &a.config)
        .output("model_out", &a.model_out)
        .output("report_out", &a.report_out)
        .config("", &cfg)?
        .config("schema", &schema)?
        .result("total_seconds", report.total_seconds)
        .result("train_rows", report.train_rows as i64)
        .result("validation_rows", report.validation_rows as i64)
        .result("test_rows", split.test.len() as i64)
        .result("adam_steps", report.adam_steps as i64)
        .result("parameters", params.param_count() as i64);
    if let Some(last) = report.epochs.last() {
        man.result("final_train_loss", last.train_loss);
    }
    if let Some(s) = &a.schema {
        man.input("schema", s);
    }
    man.write(&manifest_path(&a.model_out))
}

fn load_features(
    params: &ModelParams,
    meta: &ModelMetadata,
    model_path: &Path,
    data: &Path,
) -> Result<(EncodingMeta, cnn_ids::pipeline::RawTable)> {
    let enc = model_encoding(meta, model_path)?;
    if enc.n_features() != params.input_len() {
        return Err(cnn_ids::Error::Config(format!(
            "model encoding yields {} features but the network expects {}",
            enc.n_features(),
            params.input_len()
        ))
        .into());
    }
    Ok((enc, load_csv(data)?))
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let mut man = Manifest::start("eval");
    let (params, meta) = read_model(&a.model)?;
    let (enc, table) = load_features(&params, &meta, &a.model, &a.data)?;
    let (ds, enc_report) = enc.transform(&table)?;
    report_unseen(&enc_report);

    let started = Instant::now();
    let pred = predict(&params, &ds.features)?;
    let test_seconds = started.elapsed().as_secs_f64();

    let cm = confusion(&ds.labels, &pred, ds.num_classes())?.with_labels(&ds.label_names);
    let mut metrics = compute_metrics(&cm)?;
    metrics.test_seconds = Some(test_seconds);
    print!("{metrics}");

    let mut w = BufWriter::new(
        File::create(&a.confusion_out)
            .with_context(|| format!("creating {}", a.confusion_out.display()))?,
    );
    cm.write_csv(&mut w)?;
    w.flush()?;
    std::fs::write(&a.metrics_out, metrics.to_key_values())
        .with_context(|| format!("writing {}", a.metrics_out.display()))?;

    man.input("data", &a.data)
        .input("model", &a.model)
        .output("confusion_out", &a.confusion_out)
        .output("metrics_out", &a.metrics_out)
        .result("samples", metrics.samples as i64)
        .result("accuracy", metrics.accuracy)
        .result("macro_f1", metrics.macro_f1)
        .result("test_seconds", test_seconds);
    if let Some(s) = meta.seed {
        man.seed(s);
    }
    man.write(&manifest_path(&a.metrics_out))
}

fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let mut man = Manifest::start("predict");
    let (params, meta) = read_model(&a.model)?;
    let (enc, table) = load_features(&params, &meta, &a.model, &a.input)?;
    let (features, enc_report) = enc.transform_features(&table)?;
    report_unseen(&enc_report);
    let logits = predict_logits(&params, &features)?;

    let mut w = BufWriter::new(
        File::create(&a.output).with_context(|| format!("creating {}", a.output.display()))?,
    );
    writeln!(w, "row_index,predicted_class,confidence")?;
    for (i, z) in logits.iter().enumerate() {
        let k = argmax(z);
        let p = softmax(z)?;
        let name = &enc.label_names[k];
        let name = if name.contains([',', '"', '\n']) {
            format!("\"{}\"", name.replace('"', "\"\""))
        } else {
            name.clone()
        };
        writeln!(w, "{i},{name},{:.6}", p[k])?;
    }
    w.flush()?;
    println!(
        "{} predictions written to {}",
        logits.len(),
        a.output.display()
    );

    man.input("model", &a.model)
        .input("input", &a.input)
        .output("output", &a.output)
        .result("rows", logits.len() as i64)
        .result("unseen_categories", enc_report.total_unseen() as i64);
    man.write(&manifest_path(&a.output))
}

fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let mut man = Manifest::start("bench");
    if a.repeat == 0 {
        return Err(UsageError("--repeat must be at least 1".into()).into());
    }
    let (params, meta) = read_model(&a.model)?;
    let (enc, table) = load_features(&params, &meta, &a.model, &a.data)?;
    let (features, _) = enc.transform_features(&table)?;
    let t = timed_inference(&params, &features, a.repeat)?;
    let digest = t
        .predictions
        .iter()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, &p| {
            (h ^ p as u64).wrapping_mul(0x0100_0000_01b3)
        });
    let lines = [
        format!("rows={}", features.n_rows()),
        format!("repeat={}", a.repeat),
        format!("seconds_per_pass={:.6}", t.seconds_per_pass),
        format!("rows_per_second={:.1}", t.rows_per_second),
        format!("prediction_digest={digest:016x}"),
    ];
    for l in &lines {
        println!("{l}");
    }
    println!(
        "reference: {REFERENCE_TEST_SECONDS} s per held-out pass on different hardware (informational, not comparable)"
    );
    man.input("model", &a.model)
        .input("data", &a.data)
        .result("rows", features.n_rows() as i64)
        .result("repeat", a.repeat as i64)
        .result("seconds_per_pass", t.seconds_per_pass)
        .result("rows_per_second", t.rows_per_second);
    let at = match &a.report_out {
        Some(p) => {
            std::fs::write(p, lines.join("\n") + "\n")
                .with_context(|| format!("writing {}", p.display()))?;
            man.output("report_out", p);
            manifest_path(p)
        }
        None => {
            let mut name = a.model.file_name().unwrap_or_default().to_os_string();
            name.push(".bench");
            manifest_path(&a.model.with_file_name(name))
        }
    };
    man.write(&at)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use cnn_ids::Error as E;
    if err.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    if let Some(e) = err.downcast_ref::<E>() {
        return match e {
            E::Config(_) | E::Architecture(_) => EXIT_USAGE,
            E::Data(_) | E::Io { .. } | E::Csv(_) | E::Format(_) | E::Shape(_) => EXIT_DATA,
            E::Numeric(_) | E::Divergence { .. } => EXIT_NUMERIC,
            E::Internal(_) => EXIT_OTHER,
        };
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return EXIT_DATA;
    }
    EXIT_OTHER
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::default().default_filter_or("warn,cnn_ids=info"),
    )
    .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Prep(a) => cmd_prep(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
