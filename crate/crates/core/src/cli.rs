//! Command implementations behind the `windbias` binary.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::campaign::{run_campaign, write_atomic, CampaignSpec};
use crate::data::{read_observations, save_observations};
use crate::empirical::{
    difference_trend, difference_vs_average, empirical_bias, match_by_antenna, write_bins, write_pairs, MatchConfig,
};
use crate::fit::{fit_model, FitConfig, FitResult};
use crate::report::write_report;
use crate::simulate::{simulate, SimConfig};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "windbias", version, about = "Wind-speed sensor bias estimation with a space-time Gaussian process")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "WINDBIAS_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate tracks and winds from a JSON configuration.
    Simulate(SimulateArgs),
    /// Fit the model to one data file.
    Fit(FitArgs),
    /// Closest-pair collocation against the reference sensor.
    Match(MatchArgs),
    /// Fit every (platform, week) of a campaign.
    Campaign(CampaignArgs),
    /// Build plot-data tables from campaign results.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Generating parameters (default: `<out>.truth.json`).
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// FitConfig JSON; defaults for missing fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Result JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    /// CYGNSS observations (any number of platforms).
    #[arg(long)]
    pub cyg: PathBuf,
    /// Reference observations.
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long, default_value_t = 7200.0)]
    pub window_s: f64,
    #[arg(long, default_value_t = 25.0)]
    pub max_km: f64,
    #[arg(long, default_value_t = 1.0)]
    pub bin_width: f64,
    /// Anchor of the first window.
    #[arg(long, default_value_t = 0.0)]
    pub origin_s: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct CampaignArgs {
    #[arg(long)]
    pub spec: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Campaign output directory.
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|source| Error::Json { path: path.into(), source })?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn io_out(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

pub fn cmd_simulate(args: &SimulateArgs, out: &mut impl Write) -> Result<()> {
    let config = SimConfig::load(&args.config)?;
    let set = simulate(&config)?;
    save_observations(&set, &args.out)?;
    let truth = args.truth.clone().unwrap_or_else(|| {
        let mut p = args.out.as_os_str().to_owned();
        p.push(".truth.json");
        p.into()
    });
    write_json(&truth, &config)?;
    writeln!(out, "wrote {} observations to {}", set.len(), args.out.display()).map_err(io_out)?;
    writeln!(out, "wrote generating parameters to {}", truth.display()).map_err(io_out)
}

fn load_fit_config(path: Option<&Path>) -> Result<FitConfig> {
    match path {
        None => Ok(FitConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|source| Error::Json { path: p.into(), source })
        }
    }
}

/// Bias summary table as printed by `fit`.
pub fn format_bias_table(fit: &FitResult) -> String {
    let b = &fit.bias_summary;
    let mut s = format!("{:<22}{:>24}{:>24}\n", "quantity", "estimate", "std_error");
    for (name, e) in [
        ("starboard-reference", b.starboard),
        ("port-reference", b.port),
        ("port-starboard", b.port_minus_starboard),
        ("sqrt2_sigma", b.difference_sd),
    ] {
        let se = e.se.map(|v| v.to_string()).unwrap_or_else(|| "NA".into());
        s.push_str(&format!("{name:<22}{:>24}{se:>24}\n", e.value));
    }
    s.push_str(&format!("converged: {} ({} iterations, loglik {})\n", fit.converged, fit.iterations, fit.loglik));
    if !fit.flags.is_empty() {
        s.push_str(&format!("flags: {}\n", fit.flags.join(", ")));
    }
    s
}

pub fn cmd_fit(args: &FitArgs, out: &mut impl Write) -> Result<()> {
    let config = load_fit_config(args.config.as_deref())?;
    let data = read_observations(&args.data)?;
    let fit = fit_model(&data, &config)?;
    write_json(&args.out, &fit)?;
    out.write_all(format_bias_table(&fit).as_bytes()).map_err(io_out)
}

pub fn cmd_match(args: &MatchArgs, out: &mut impl Write) -> Result<()> {
    let config = MatchConfig { window_s: args.window_s, max_km: args.max_km, origin_s: args.origin_s };
    config.validate()?;
    if !(args.bin_width > 0.0) {
        return Err(Error::InvalidArgument(format!("bin width must be positive, got {}", args.bin_width)));
    }
    let cyg = read_observations(&args.cyg)?.filter(|o| !o.sensor.is_reference());
    let reference = read_observations(&args.reference)?.filter(|o| o.sensor.is_reference());
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;

    let groups = match_by_antenna(&cyg, &reference, &config)?;
    let mut summary = String::from("platform,antenna,status,count,bias,se,trend_slope,trend_slope_se\n");
    if groups.is_empty() {
        writeln!(out, "no collocations: no CYGNSS observations in {}", args.cyg.display()).map_err(io_out)?;
    }
    for (platform, antenna, pairs) in &groups {
        let stem = format!("{platform}_{}", antenna.name());
        let mut buf = Vec::new();
        write_pairs(pairs, &mut buf)?;
        write_atomic(&args.out_dir.join(format!("pairs_{stem}.csv")), &buf)?;
        let mut buf = Vec::new();
        write_bins(&difference_vs_average(pairs, args.bin_width)?, &mut buf)?;
        write_atomic(&args.out_dir.join(format!("bins_{stem}.csv")), &buf)?;

        match empirical_bias(pairs) {
            Ok(b) => {
                let trend = difference_trend(pairs);
                let se = b.se.map(|v| v.to_string()).unwrap_or_default();
                summary.push_str(&format!(
                    "{platform},{},ok,{},{},{se},{},{}\n",
                    antenna.name(),
                    b.count,
                    b.bias,
                    trend.map(|t| t.slope.to_string()).unwrap_or_default(),
                    trend.map(|t| t.slope_se.to_string()).unwrap_or_default()
                ));
                writeln!(
                    out,
                    "{platform} {}: {} pairs, bias {} (se {})",
                    antenna.name(),
                    b.count,
                    b.bias,
                    if se.is_empty() { "NA" } else { &se }
                )
                .map_err(io_out)?;
            }
            Err(Error::NoCollocations) => {
                summary.push_str(&format!("{platform},{},no_collocations,0,,,,\n", antenna.name()));
                writeln!(out, "{platform} {}: no collocations", antenna.name()).map_err(io_out)?;
            }
            Err(e) => return Err(e),
        }
    }
    write_atomic(&args.out_dir.join("match_summary.csv"), summary.as_bytes())
}

pub fn cmd_campaign(args: &CampaignArgs, out: &mut impl Write) -> Result<()> {
    let spec = CampaignSpec::load(&args.spec)?;
    let result = run_campaign(&spec)?;
    let failed = result.fits.iter().filter(|r| r.outcome.is_err()).count();
    let unconverged = result.fits.iter().filter(|r| r.outcome.as_ref().is_ok_and(|f| !f.converged)).count();
    writeln!(
        out,
        "{} fits ({} failed, {} not converged); results in {}",
        result.fits.len(),
        failed,
        unconverged,
        spec.output_dir.display()
    )
    .map_err(io_out)
}

pub fn cmd_report(args: &ReportArgs, out: &mut impl Write) -> Result<()> {
    let inputs = write_report(&args.results, &args.out_dir)?;
    writeln!(out, "{} fit results, {} skipped; tables in {}", inputs.entries.len(), inputs.skipped.len(), args.out_dir.display())
        .map_err(io_out)?;
    for (path, reason) in &inputs.skipped {
        writeln!(out, "skipped {}: {reason}", path.display()).map_err(io_out)?;
    }
    Ok(())
}

pub fn run(command: &Command, out: &mut impl Write) -> Result<()> {
    match command {
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Fit(a) => cmd_fit(a, out),
        Command::Match(a) => cmd_match(a, out),
        Command::Campaign(a) => cmd_campaign(a, out),
        Command::Report(a) => cmd_report(a, out),
    }
}
