use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, ValueEnum};
use realmix::experiments::{emit_report, series_csv, summary_csv, ExperimentReport};

use crate::manifest::RunManifest;
use crate::util::{ensure_fresh_dir, percent, require_exists};
use crate::Global;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Summary,
    Series,
    Json,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// `report.json` or the directory holding it.
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

pub fn print_table(report: &ExperimentReport) {
    println!("{} experiment, seeds {:?}", report.kind, report.seeds);
    println!("{:<22} {:<16} {:>5} {:>9} {:>8}", "arm", "condition", "seeds", "mean", "std");
    for c in &report.conditions {
        let std = c.std.map(percent).unwrap_or_else(|| "-".into());
        println!(
            "{:<22} {:<16} {:>5} {:>9} {:>8}",
            c.arm,
            c.condition,
            c.errors.len(),
            percent(c.mean),
            std
        );
    }
    if let Some(b) = report.baseline_error {
        println!("labeled-only baseline: {}", percent(b));
    }
}

pub fn run(global: &Global, args: &ReportArgs) -> Result<()> {
    let path = if args.input.is_dir() { args.input.join("report.json") } else { args.input.clone() };
    require_exists(&path, "report")?;
    let report = ExperimentReport::load(&path)?;
    match args.format {
        Format::Table => print_table(&report),
        Format::Summary => print!("{}", summary_csv(&report)),
        Format::Series => print!("{}", series_csv(&report)),
        Format::Json => println!("{}", report.to_json()),
    }
    if let Some(out) = &global.out {
        ensure_fresh_dir(out)?;
        let manifest = RunManifest::start("report", out, None, Some(report.config_hash.clone()))?;
        let result = emit_report(&report, out).map_err(anyhow::Error::from);
        for p in manifest.finish(result)? {
            eprintln!("wrote {}", p.display());
        }
    }
    Ok(())
}
