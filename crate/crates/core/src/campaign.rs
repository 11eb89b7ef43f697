//! One fit per (platform, week), run in a worker pool, with per-fit JSON
//! results, a summary table and the matching empirical estimates.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{read_observations, split_weeks, study_week_starts, subsample, ObservationSet, Sensor};
use crate::empirical::{empirical_bias, match_pairs, MatchConfig};
use crate::fit::{fit_model, FitConfig, FitResult};
use crate::simulate::replicate_seed;
use crate::{Error, Result};

/// Week windows: the named study calendar or explicit start times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeekSpec {
    /// `"study"`: the 49 weeks of the September 2019 to September 2020
    /// campaign.
    Named(String),
    Starts(Vec<f64>),
}

impl WeekSpec {
    pub fn starts(&self) -> Result<Vec<f64>> {
        match self {
            WeekSpec::Named(name) if name == "study" => Ok(study_week_starts()),
            WeekSpec::Named(name) => Err(Error::InvalidArgument(format!("unknown week calendar {name:?}"))),
            WeekSpec::Starts(s) if s.is_empty() => Err(Error::InvalidArgument("no weeks given".into())),
            WeekSpec::Starts(s) => Ok(s.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlatformInput {
    pub name: String,
    pub files: Vec<PathBuf>,
}

fn default_per_source() -> usize {
    20_000
}

/// Campaign description, read from JSON. Relative paths are resolved
/// against the directory of the spec file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignSpec {
    /// Files holding the reference-sensor observations.
    pub reference: Vec<PathBuf>,
    pub platforms: Vec<PlatformInput>,
    pub weeks: WeekSpec,
    #[serde(default)]
    pub fit: FitConfig,
    /// Observations kept per source group and fit.
    #[serde(default = "default_per_source")]
    pub subsample_per_source: usize,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Concurrent fits; the global pool when absent.
    #[serde(default)]
    pub threads: Option<usize>,
    /// Window length and separation cap for the empirical analysis. The
    /// window origin is always the week start.
    #[serde(default)]
    pub matching: MatchConfig,
}

impl CampaignSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec: CampaignSpec =
            serde_json::from_str(&text).map_err(|source| Error::Json { path: path.into(), source })?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        spec.reference.iter_mut().for_each(resolve);
        spec.platforms.iter_mut().flat_map(|p| p.files.iter_mut()).for_each(resolve);
        resolve(&mut spec.output_dir);
        Ok(spec)
    }
}

/// Outcome of one (platform, week) fit.
#[derive(Clone, Debug)]
pub struct FitRow {
    pub platform: String,
    pub week: usize,
    pub week_start_s: f64,
    pub n: usize,
    pub outcome: std::result::Result<FitResult, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalRow {
    pub platform: String,
    pub week: usize,
    pub antenna: Sensor,
    pub count: usize,
    pub bias: Option<f64>,
    pub se: Option<f64>,
}

pub struct CampaignOutput {
    pub fits: Vec<FitRow>,
    pub empirical: Vec<EmpiricalRow>,
}

/// File name of the result for one fit.
pub fn result_file_name(platform: &str, week: usize) -> String {
    format!("{platform}_w{week:02}.json")
}

/// Writes `bytes` to a temporary file next to `path` and renames it into
/// place.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn load_all(paths: &[PathBuf]) -> Result<ObservationSet> {
    let sets = paths.iter().map(|p| read_observations(p)).collect::<Result<Vec<_>>>()?;
    Ok(ObservationSet::concat(&sets))
}

/// Runs every (platform, week) fit and the per-antenna matching, writes
/// `fits/*.json`, `summary.csv` and `empirical.csv` under the output
/// directory, and returns the rows. A failed fit becomes a row with status
/// `failed`; it never stops the campaign.
pub fn run_campaign(spec: &CampaignSpec) -> Result<CampaignOutput> {
    spec.fit.validate()?;
    spec.matching.validate()?;
    if spec.platforms.is_empty() {
        return Err(Error::InvalidArgument("campaign lists no platforms".into()));
    }
    let starts = spec.weeks.starts()?;
    let reference = load_all(&spec.reference)?.filter(|o| o.sensor.is_reference());
    let reference_weeks = split_weeks(&reference, &starts)?;
    let mut platform_weeks = Vec::with_capacity(spec.platforms.len());
    for p in &spec.platforms {
        let set = load_all(&p.files)?.filter(|o| !o.sensor.is_reference());
        platform_weeks.push(split_weeks(&set, &starts)?);
    }

    let fits_dir = spec.output_dir.join("fits");
    std::fs::create_dir_all(&fits_dir).map_err(|e| Error::io(&fits_dir, e))?;

    let jobs: Vec<(usize, usize)> =
        (0..spec.platforms.len()).flat_map(|p| (0..starts.len()).map(move |w| (p, w))).collect();
    let run_job = |&(p, w): &(usize, usize)| -> Result<(FitRow, Vec<EmpiricalRow>)> {
        let name = &spec.platforms[p].name;
        let mut week = ObservationSet::concat([&reference_weeks[w], &platform_weeks[p][w]]);
        week.provenance.set("platform", name);
        week.provenance.set("week.index", w);
        week.provenance.set("week.start_s", starts[w]);
        let seed = replicate_seed(spec.seed, (p * starts.len() + w) as u64);
        let outcome = subsample(&week, spec.subsample_per_source, seed).and_then(|s| {
            let n = s.len();
            fit_model(&s, &FitConfig { seed, ..spec.fit.clone() }).map(|f| (n, f))
        });
        let (n, outcome) = match outcome {
            Ok((n, fit)) => {
                let json = serde_json::to_vec_pretty(&fit).expect("fit results serialize");
                write_atomic(&fits_dir.join(result_file_name(name, w)), &json)?;
                (n, Ok(fit))
            }
            Err(e) => {
                let k = spec.subsample_per_source;
                let n_ref = week.count_sensor(Sensor::Reference);
                (n_ref.min(k) + (week.len() - n_ref).min(k), Err(e.to_string()))
            }
        };

        let cfg = MatchConfig { origin_s: starts[w], ..spec.matching };
        let mut empirical = Vec::new();
        for antenna in [Sensor::Starboard, Sensor::Port] {
            let cyg = platform_weeks[p][w].filter(|o| o.sensor == antenna);
            let pairs = match_pairs(&cyg, &reference_weeks[w], &cfg)?;
            let est = empirical_bias(&pairs).ok();
            empirical.push(EmpiricalRow {
                platform: name.clone(),
                week: w,
                antenna,
                count: pairs.len(),
                bias: est.map(|e| e.bias),
                se: est.and_then(|e| e.se),
            });
        }
        Ok((FitRow { platform: name.clone(), week: w, week_start_s: starts[w], n, outcome }, empirical))
    };

    let results: Vec<Result<(FitRow, Vec<EmpiricalRow>)>> = match spec.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?
            .install(|| jobs.par_iter().map(run_job).collect()),
        None => jobs.par_iter().map(run_job).collect(),
    };
    let mut fits = Vec::with_capacity(jobs.len());
    let mut empirical = Vec::new();
    for r in results {
        let (row, emp) = r?;
        fits.push(row);
        empirical.extend(emp);
    }

    write_atomic(&spec.output_dir.join("summary.csv"), summary_csv(&fits).as_bytes())?;
    write_atomic(&spec.output_dir.join("empirical.csv"), empirical_csv(&empirical).as_bytes())?;
    Ok(CampaignOutput { fits, empirical })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub const SUMMARY_HEADER: &str = "platform,week,week_start_s,status,n,c2,se_c2,c3,se_c3,c3_minus_c2,se_c3_minus_c2,\
sqrt2_sigma,se_sqrt2_sigma,converged,iterations,loglik,message";

/// One row per fit, in job order.
pub fn summary_csv(rows: &[FitRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{},{},{},", csv_field(&r.platform), r.week, r.week_start_s);
        match &r.outcome {
            Ok(f) => {
                let b = &f.bias_summary;
                let _ = writeln!(
                    out,
                    "ok,{},{},{},{},{},{},{},{},{},{},{},{},",
                    r.n,
                    b.starboard.value,
                    opt(b.starboard.se),
                    b.port.value,
                    opt(b.port.se),
                    b.port_minus_starboard.value,
                    opt(b.port_minus_starboard.se),
                    b.difference_sd.value,
                    opt(b.difference_sd.se),
                    f.converged,
                    f.iterations,
                    f.loglik
                );
            }
            Err(msg) => {
                let _ = writeln!(out, "failed,{},,,,,,,,,,,,{}", r.n, csv_field(msg));
            }
        }
    }
    out
}

pub const EMPIRICAL_HEADER: &str = "platform,week,antenna,status,count,bias,se";

pub fn empirical_csv(rows: &[EmpiricalRow]) -> String {
    let mut out = String::from(EMPIRICAL_HEADER);
    out.push('\n');
    for r in rows {
        let status = if r.count == 0 { "no_collocations" } else { "ok" };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            csv_field(&r.platform),
            r.week,
            r.antenna.name(),
            status,
            r.count,
            opt(r.bias),
            opt(r.se)
        );
    }
    out
}
