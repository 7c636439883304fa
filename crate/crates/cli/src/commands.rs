use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use linkerr::ci_baseline::{build_comparison_frequencies, fit_ci as fit_baseline, ComparisonFrequencyTable};
use linkerr::inference::{bootstrap as run_bootstrap, parametric_bootstrap_lrt};
use linkerr::neighbourhood::{count_per_record, recommended_sample_size, srs_sample, RecordTable};
use linkerr::rng::derive_seed;
use linkerr::simgen::{generate, run_study, true_parameters};
use linkerr::{fit as fit_mixture, LinkageReport, NeighbourCountSample};

use crate::config::{RunConfig, SampleSize, SizeRule};
use crate::error::CliError;
use crate::report::Report;

const TRUTH_COLUMN_OUT: &str = "id";

/// Stage indices fed to `derive_seed` with the global seed.
const STAGES: [(&str, u64); 6] = [
    ("simulate", 0),
    ("sample", 1),
    ("fit", 2),
    ("bootstrap", 3),
    ("lrt", 4),
    ("study", 5),
];

fn stage_seed(cfg: &RunConfig, stage: &str) -> u64 {
    let index = STAGES.iter().find(|s| s.0 == stage).expect("known stage").1;
    let seed = derive_seed(cfg.seed, index);
    log::info!("stage `{stage}` seed {seed}");
    seed
}

fn seeds(cfg: &RunConfig, stages: &[&str]) -> BTreeMap<String, u64> {
    stages.iter().map(|s| (s.to_string(), stage_seed(cfg, s))).collect()
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::io(format!("cannot open {}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(format!("cannot create {}: {e}", path.display())))
}

/// Runs `write` against the `--out` file, or standard output.
fn emit<F>(cfg: &RunConfig, write: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> Result<(), CliError>,
{
    match &cfg.out {
        Some(path) => {
            let mut w = create(path)?;
            write(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            write(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn emit_report(cfg: &RunConfig, report: &Report) -> Result<(), CliError> {
    let text = report.render(cfg.format);
    emit(cfg, |w| Ok(w.write_all(text.as_bytes())?))
}

fn read_records(cfg: &RunConfig) -> Result<(RecordTable, RecordTable), CliError> {
    let input = &cfg.input;
    let (Some(a), Some(b)) = (&input.file_a, &input.file_b) else {
        return Err(CliError::config("both --file-a and --file-b are required"));
    };
    let delim = input.delimiter_byte()?;
    let truth = Some(input.truth_column.as_str());
    Ok((
        RecordTable::read_delimited(open(a)?, delim, truth)?,
        RecordTable::read_delimited(open(b)?, delim, truth)?,
    ))
}

/// Full-population counts and the population size.
fn population_counts(cfg: &RunConfig) -> Result<(NeighbourCountSample, u64), CliError> {
    let input = &cfg.input;
    if let Some(path) = &input.counts {
        let full = NeighbourCountSample::read_delimited(open(path)?, input.delimiter_byte()?)?;
        let n = input.population.unwrap_or(full.m());
        return Ok((full, n));
    }
    let (a, b) = read_records(cfg)?;
    let n = input.population.unwrap_or(b.len() as u64);
    Ok((count_per_record(&a, &b, &input.neighbourhood)?.to_sample(), n))
}

/// The sample the estimators see, after the configured subsampling.
fn working_sample(cfg: &RunConfig) -> Result<(NeighbourCountSample, u64), CliError> {
    let (full, n) = population_counts(cfg)?;
    let records = full.m();
    let m = match cfg.input.sample_size {
        SampleSize::Rule(SizeRule::All) => return Ok((full, n)),
        SampleSize::Rule(SizeRule::Auto) => recommended_sample_size(records, cfg.input.sample_factor)?,
        SampleSize::Fixed(m) => m,
    };
    log::info!("sampling {m} of {records} records");
    Ok((srs_sample(&full, m, stage_seed(cfg, "sample"))?, n))
}

pub fn simulate(cfg: RunConfig) -> Result<(), CliError> {
    let seeds = seeds(&cfg, &["simulate"]);
    let sim = cfg.simulate.scenario.resolve(seeds["simulate"])?;
    let (a, b) = generate(&sim)?;
    let dir = cfg.simulate.dir.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))?;
    let files = vec![dir.join("a.csv"), dir.join("b.csv")];
    for (table, path) in [(&a, &files[0]), (&b, &files[1])] {
        let mut w = create(path)?;
        table.write_delimited(&mut w, b',', TRUTH_COLUMN_OUT)?;
        w.flush()?;
    }
    let truth = true_parameters(&sim)?;
    emit_report(
        &cfg,
        &Report::Simulate {
            config: cfg.clone(),
            seeds,
            sim,
            truth,
            files,
        },
    )
}

pub fn count(cfg: RunConfig) -> Result<(), CliError> {
    let (a, b) = read_records(&cfg)?;
    let counts = count_per_record(&a, &b, &cfg.input.neighbourhood)?;
    let sample = counts.to_sample();
    let delim = cfg.input.delimiter_byte()?;
    if cfg.count.split && !sample.is_split() {
        return Err(CliError::config("--split needs a truth column in both files"));
    }
    emit(&cfg, |w| {
        if cfg.count.split {
            sample.write_split_delimited(w, delim)?;
        } else {
            sample.write_delimited(w, delim)?;
        }
        Ok(())
    })
}

pub fn sample(cfg: RunConfig) -> Result<(), CliError> {
    if cfg.input.sample_size == SampleSize::Rule(SizeRule::All) {
        return Err(CliError::config("sample needs --sample-size auto or a record count"));
    }
    let (sample, _) = working_sample(&cfg)?;
    let delim = cfg.input.delimiter_byte()?;
    emit(&cfg, |w| Ok(sample.write_delimited(w, delim)?))
}

fn with_fit_seed(mut cfg: RunConfig, seed: u64) -> RunConfig {
    cfg.fit.em.seed = seed;
    cfg
}

pub fn fit(cfg: RunConfig) -> Result<(), CliError> {
    let seeds = seeds(&cfg, &["sample", "fit"]);
    let cfg = with_fit_seed(cfg, seeds["fit"]);
    let (sample, n) = working_sample(&cfg)?;
    let fit = fit_mixture(&sample, cfg.fit.g, &cfg.fit.em)?;
    let linkage = LinkageReport::from_params(&fit.params, n)?;
    emit_report(
        &cfg,
        &Report::Fit {
            m: sample.m(),
            config: cfg.clone(),
            seeds,
            fit,
            linkage,
        },
    )
}

pub fn fit_ci(cfg: RunConfig) -> Result<(), CliError> {
    let (table, n) = match &cfg.fit_ci.table {
        Some(path) => {
            let table = ComparisonFrequencyTable::read_delimited(open(path)?, cfg.input.delimiter_byte()?)?;
            let n = cfg
                .input
                .population
                .ok_or_else(|| CliError::config("--population is required with a pattern table"))?;
            (table, n)
        }
        None => {
            let (a, b) = read_records(&cfg)?;
            let n = cfg.input.population.unwrap_or(b.len() as u64);
            (build_comparison_frequencies(&a, &b)?, n)
        }
    };
    let fit = fit_baseline(&table, n, &cfg.fit_ci.em)?;
    let (e_p, e_lambda) = fit.params.expectations();
    let linkage = LinkageReport::from_expectations(e_p, e_lambda, n)?;
    emit_report(
        &cfg,
        &Report::FitCi {
            config: cfg.clone(),
            seeds: BTreeMap::new(),
            fit,
            linkage,
        },
    )
}

pub fn bootstrap(cfg: RunConfig) -> Result<(), CliError> {
    let seeds = seeds(&cfg, &["sample", "fit", "bootstrap"]);
    let cfg = with_fit_seed(cfg, seeds["fit"]);
    let (sample, n) = working_sample(&cfg)?;
    let result = run_bootstrap(
        &sample,
        cfg.fit.g,
        cfg.bootstrap.b,
        cfg.bootstrap.alpha,
        seeds["bootstrap"],
        &cfg.fit.em,
        Some(n),
    )?;
    if let Some(path) = &cfg.bootstrap.replicates {
        let mut w = create(path)?;
        result.write_replicates(&mut w)?;
        w.flush()?;
    }
    let linkage = if n >= 2 {
        let mut l = LinkageReport::from_expectations(result.e_p, result.e_lambda, n)?;
        l.intervals = result.intervals.clone();
        Some(l)
    } else {
        None
    };
    emit_report(
        &cfg,
        &Report::Bootstrap {
            m: sample.m(),
            g: cfg.fit.g,
            config: cfg.clone(),
            seeds,
            bootstrap: result,
            linkage,
        },
    )
}

pub fn lrt(cfg: RunConfig) -> Result<(), CliError> {
    let seeds = seeds(&cfg, &["sample", "fit", "lrt"]);
    let cfg = with_fit_seed(cfg, seeds["fit"]);
    let (sample, _) = working_sample(&cfg)?;
    let gmax = cfg.lrt.gmax;
    let g_list: Vec<usize> = if cfg.lrt.g_list.is_empty() {
        (1..gmax).collect()
    } else {
        cfg.lrt.g_list.clone()
    };
    if g_list.is_empty() {
        return Err(CliError::config("gmax must be at least 2"));
    }
    let tests = g_list
        .iter()
        .map(|&g0| {
            parametric_bootstrap_lrt(
                &sample,
                g0,
                gmax,
                cfg.lrt.b,
                cfg.lrt.alpha,
                derive_seed(seeds["lrt"], g0 as u64),
                &cfg.fit.em,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    emit_report(
        &cfg,
        &Report::Lrt {
            m: sample.m(),
            config: cfg.clone(),
            seeds,
            tests,
        },
    )
}

pub fn study(cfg: RunConfig) -> Result<(), CliError> {
    let seeds = seeds(&cfg, &["study"]);
    let study_cfg = cfg.study.resolve()?;
    let study = run_study(&study_cfg, seeds["study"])?;
    if let Some(path) = &cfg.study.qq {
        let mut w = create(path)?;
        study.write_qq(&mut w)?;
        w.flush()?;
    }
    emit_report(
        &cfg,
        &Report::Study {
            config: cfg.clone(),
            seeds,
            study,
        },
    )
}

pub fn report(cfg: RunConfig, input: &Path) -> Result<(), CliError> {
    let report: Report = serde_json::from_reader(open(input)?)
        .map_err(|e| CliError::io(format!("{} is not a report document: {e}", input.display())))?;
    emit_report(&cfg, &report)
}
