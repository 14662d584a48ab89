use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use itsc_core::app::{cmd_bench, cmd_generate, cmd_report, cmd_run, RunConfig};
use itsc_core::Error;

/// Imbalanced time-series classification experiments.
#[derive(Debug, Parser)]
#[command(name = "itsc", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Write a seeded synthetic dataset as CSV plus a manifest.
    Generate(Common),
    /// Cross-validate one model under one training mode.
    Run(Common),
    /// Run a models × modes × samplers matrix into a directory.
    Bench(Common),
    /// Render reports (files or bench directories) as a table.
    Report {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Write the λ trajectory of the single given report as CSV.
        #[arg(long)]
        lambda_csv: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// JSON config file; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    /// Sampler method; implies `--mode sampled` unless a mode is given.
    #[arg(long)]
    sampler: Option<String>,
    #[arg(long)]
    folds: Option<u64>,
    #[arg(long)]
    epochs: Option<u64>,
    #[arg(long)]
    batch_size: Option<u64>,
    /// Training seed, or the data seed for `generate`.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV dataset, replacing the configured data source.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn set(root: &mut Value, path: &[&str], v: Value) {
    let mut cur = root;
    for key in &path[..path.len() - 1] {
        if !cur.is_object() {
            *cur = Value::Object(Map::new());
        }
        cur = cur
            .as_object_mut()
            .unwrap()
            .entry(key.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    if !cur.is_object() {
        *cur = Value::Object(Map::new());
    }
    cur.as_object_mut().unwrap().insert(path[path.len() - 1].to_string(), v);
}

fn load_config(c: &Common, generate: bool) -> Result<RunConfig, Error> {
    let mut root = match &c.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            serde_json::from_str(&text).map_err(|e| Error::Config {
                field: "<root>".into(),
                message: e.to_string(),
            })?
        }
        None => json!({}),
    };
    if let Some(m) = &c.model {
        set(&mut root, &["model"], json!(m));
    }
    if let Some(m) = &c.mode {
        set(&mut root, &["train", "mode"], json!(m));
    }
    if let Some(s) = &c.sampler {
        set(&mut root, &["train", "sampler", "method"], json!(s));
        if c.mode.is_none() {
            set(&mut root, &["train", "mode"], json!("sampled"));
        }
    }
    if let Some(k) = c.folds {
        set(&mut root, &["folds"], json!(k));
    }
    if let Some(e) = c.epochs {
        set(&mut root, &["train", "epochs"], json!(e));
    }
    if let Some(b) = c.batch_size {
        set(&mut root, &["train", "batch_size"], json!(b));
    }
    if let Some(s) = c.seed {
        if generate {
            set(&mut root, &["data", "synth", "seed"], json!(s));
        } else {
            set(&mut root, &["train", "seed"], json!(s));
        }
    }
    if let Some(d) = &c.data {
        set(&mut root, &["data"], json!({ "csv": { "path": d } }));
    }
    if let Some(o) = &c.out {
        set(&mut root, &["out"], json!(o));
    }
    RunConfig::from_value(root)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Cmd::Generate(c) => {
            let (csv, manifest) = cmd_generate(&load_config(&c, true)?)?;
            println!("wrote {} and {}", csv.display(), manifest.display());
        }
        Cmd::Run(c) => {
            let (report, path) = cmd_run(&load_config(&c, false)?)?;
            let row = itsc_core::harness::TableRow::from_report(&report);
            print!("{}", itsc_core::harness::render_table(&[row]));
            println!("wrote {}", path.display());
        }
        Cmd::Bench(c) => {
            let (_, table) = cmd_bench(&load_config(&c, false)?)?;
            print!("{table}");
        }
        Cmd::Report { paths, lambda_csv } => {
            print!("{}", cmd_report(&paths, lambda_csv.as_deref())?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 2 } else { 3 })
        }
    }
}
