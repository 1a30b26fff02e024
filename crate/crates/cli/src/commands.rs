use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;
use trade_moments::char_fn::density as approximate_density;
use trade_moments::ingest::{parse_records, write_tape, TapeRecord};
use trade_moments::price_moments::{frequency_mean, price_volume_correlation, window_price_moments};
use trade_moments::synthetic::TapeMetadata;
use trade_moments::{
    accumulate, aggregate_macro, fit_charfn, generate, price_grid, weighted_expectation, AgentTape, Alignment, Error,
    PowerSums, PriceMoments, TapeFormat, TapeKind, TapeSpec, TimestampFormat, TradeTick, VarianceStatus, Weight,
    WindowedTrades,
};

use crate::report::{nulls, num, nums, opt, Record, Report};
use crate::{
    open_output, AggregateArgs, AlignArg, CliError, Common, DensityArgs, InputFormat, MomentsArgs, OutputFormat,
    SimulateArgs, TimestampArg, WeightArg,
};

type Tick = TradeTick<f64>;

fn config<A: Serialize>(args: &A) -> Value {
    serde_json::to_value(args).expect("arguments serialize")
}

fn tape_kind(format: InputFormat) -> TapeKind {
    match format {
        InputFormat::Csv => TapeKind::Csv,
        InputFormat::JsonLines => TapeKind::JsonLines,
    }
}

fn alignment(align: AlignArg) -> Alignment {
    match align {
        AlignArg::Centered => Alignment::Centered,
        AlignArg::Trailing => Alignment::Trailing,
    }
}

fn tape_format(common: &Common) -> TapeFormat {
    let timestamps = match common.timestamps {
        TimestampArg::EpochNanos => TimestampFormat::EpochNanos,
        TimestampArg::EpochMillis => TimestampFormat::EpochMillis,
        TimestampArg::Iso8601 => TimestampFormat::Iso8601,
    };
    let base = match common.format {
        InputFormat::Csv => TapeFormat::csv(),
        InputFormat::JsonLines => TapeFormat::json_lines(),
    };
    base.with_timestamps(timestamps)
}

/// Flag checks that must pass before any file is read.
fn validate_common(common: &Common) -> Result<Option<i64>, CliError> {
    match common.window {
        None => Ok(None),
        Some(w) if w.is_finite() && w > 0.0 => {
            let nanos = (w * 1e9).round();
            if nanos < 1.0 || nanos >= i64::MAX as f64 {
                return Err(CliError::Usage(format!("--window {w} is out of range")));
            }
            Ok(Some(nanos as i64))
        }
        Some(w) => Err(CliError::Usage(format!(
            "--window must be a positive number of seconds, got {w}"
        ))),
    }
}

fn read_records(path: &Path, common: &Common) -> Result<Vec<TapeRecord<f64>>, CliError> {
    let file = File::open(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let records =
        parse_records(BufReader::new(file), &tape_format(common)).map_err(|e| CliError::from(e).prefixed(path))?;
    if records.is_empty() {
        return Err(CliError::from(Error::EmptyTape).prefixed(path));
    }
    Ok(records)
}

fn read_tape(path: &Path, common: &Common) -> Result<Vec<Tick>, CliError> {
    Ok(read_records(path, common)?.into_iter().map(|r| r.tick).collect())
}

fn windows(tape: Vec<Tick>, width: Option<i64>, common: &Common) -> Result<Vec<WindowedTrades<f64>>, CliError> {
    let align = alignment(common.align);
    Ok(match width {
        Some(w) => trade_moments::ingest::partition_windows_nanos(&tape, w, align)?,
        None => vec![WindowedTrades::spanning(tape, align)?],
    })
}

fn window_fields(index: usize, window: &WindowedTrades<f64>) -> Record {
    let mut r = Record::new();
    r.insert("window".into(), Value::from(index));
    r.insert("start_ns".into(), Value::from(window.spec().start().0));
    r.insert("end_ns".into(), Value::from(window.spec().end().0));
    r.insert("n".into(), Value::from(window.count()));
    r
}

fn status_name(status: Option<VarianceStatus>) -> Value {
    match status {
        Some(VarianceStatus::Positive) => Value::from("positive"),
        Some(VarianceStatus::Clamped) => Value::from("clamped"),
        Some(VarianceStatus::Negative) => Value::from("negative"),
        None => Value::Null,
    }
}

fn write_report(report: &Report, common: &Common) -> Result<(), CliError> {
    let out = open_output(common.out.as_deref())?;
    match common.output {
        OutputFormat::Json => report.write_json(out)?,
        OutputFormat::Csv => report.write_csv(out)?,
    }
    Ok(())
}

fn moments_record(index: usize, window: &WindowedTrades<f64>, n_max: usize) -> Result<Record, Error> {
    let mut r = window_fields(index, window);
    if window.is_empty() {
        for key in ["c", "u", "p"] {
            r.insert(key.into(), nulls(n_max));
        }
        for key in [
            "mean",
            "variance",
            "variance_status",
            "skewness",
            "excess_kurtosis",
            "frequency_mean",
        ] {
            r.insert(key.into(), Value::Null);
        }
        return Ok(r);
    }
    let sums: PowerSums<f64> = accumulate(window, n_max)?;
    sums.check_finite()?;
    let m: PriceMoments<f64> = window_price_moments(window, n_max)?;
    r.insert("c".into(), nums(&sums.value_sums()));
    r.insert("u".into(), nums(&sums.volume_sums()));
    r.insert("p".into(), nums(&m.p));
    r.insert("mean".into(), num(m.mean));
    r.insert("variance".into(), opt(m.variance));
    r.insert("variance_status".into(), status_name(m.variance_status));
    r.insert("skewness".into(), opt(m.skewness));
    r.insert("excess_kurtosis".into(), opt(m.excess_kurtosis));
    r.insert("frequency_mean".into(), num(frequency_mean(window.ticks())?));
    Ok(r)
}

pub fn moments(args: &MomentsArgs) -> Result<(), CliError> {
    let width = validate_common(&args.common)?;
    let n_max = args.common.nmax as usize;
    let tape = read_tape(&args.input, &args.common)?;
    let windows = windows(tape, width, &args.common)?;
    let records = windows
        .par_iter()
        .enumerate()
        .map(|(i, w)| moments_record(i, w, n_max))
        .collect::<Result<Vec<_>, _>>()?;
    let mut report = Report::new("moments", config(args));
    report.records = records;
    write_report(&report, &args.common)
}

fn compare_record(index: usize, window: &WindowedTrades<f64>) -> Result<(Record, Option<f64>), Error> {
    let mut r = window_fields(index, window);
    if window.is_empty() {
        for key in [
            "frequency_mean",
            "vwap",
            "gap",
            "relative_gap",
            "price_volume_correlation",
        ] {
            r.insert(key.into(), Value::Null);
        }
        return Ok((r, None));
    }
    let e = frequency_mean(window.ticks())?;
    let p1 = window_price_moments(window, 1)?.mean;
    let gap = p1 - e;
    r.insert("frequency_mean".into(), num(e));
    r.insert("vwap".into(), num(p1));
    r.insert("gap".into(), num(gap));
    r.insert("relative_gap".into(), num(gap / p1));
    r.insert(
        "price_volume_correlation".into(),
        opt(price_volume_correlation(window.ticks())),
    );
    Ok((r, Some(gap)))
}

pub fn compare(args: &MomentsArgs) -> Result<(), CliError> {
    let width = validate_common(&args.common)?;
    let tape = read_tape(&args.input, &args.common)?;
    let windows = windows(tape, width, &args.common)?;
    let rows = windows
        .par_iter()
        .enumerate()
        .map(|(i, w)| compare_record(i, w))
        .collect::<Result<Vec<_>, _>>()?;
    let mut max: Option<(usize, f64)> = None;
    for (i, (_, gap)) in rows.iter().enumerate() {
        if let Some(g) = gap {
            if max.is_none_or(|(_, m)| g.abs() > m.abs()) {
                max = Some((i, *g));
            }
        }
    }
    let mut summary = Record::new();
    summary.insert("max_abs_gap".into(), opt(max.map(|(_, g)| g.abs())));
    summary.insert(
        "max_gap_window".into(),
        max.map_or(Value::Null, |(i, _)| Value::from(i)),
    );
    let mut report = Report::new("compare", config(args));
    report.records = rows.into_iter().map(|(r, _)| r).collect();
    report.summary = Some(summary);
    write_report(&report, &args.common)
}

pub fn density(args: &DensityArgs) -> Result<(), CliError> {
    let width = validate_common(&args.common)?;
    let k = args.k as usize;
    if !(args.grid_sigmas.is_finite() && args.grid_sigmas > 0.0) {
        return Err(CliError::Usage("--grid-sigmas must be positive".into()));
    }
    if k == 2 && args.grid_sigmas < trade_moments::char_fn::MIN_GRID_SIGMAS {
        return Err(CliError::Usage(format!(
            "--grid-sigmas must be at least {} for --k 2",
            trade_moments::char_fn::MIN_GRID_SIGMAS
        )));
    }
    let tape = read_tape(&args.input, &args.common)?;
    let mut windows = windows(tape, width, &args.common)?;
    if args.window_index >= windows.len() {
        return Err(CliError::Usage(format!(
            "--window-index {} out of range ({} windows)",
            args.window_index,
            windows.len()
        )));
    }
    let window = windows.swap_remove(args.window_index);
    if window.is_empty() {
        return Err(CliError::Usage(format!("window {} has no trades", args.window_index)));
    }
    let n_max = (args.common.nmax as usize).max(k);
    let moments = window_price_moments(&window, n_max)?;
    let approx = fit_charfn(&moments, k)?;
    if approx.variance() <= 0.0 {
        return Err(Error::ZeroVariance { mean: approx.mean() }.into());
    }
    let grid = price_grid(
        approx.mean(),
        approx.sigma(),
        args.grid_sigmas,
        args.grid_points as usize,
    )?;
    let eta = approximate_density(&approx, &grid)?;

    let mut report = Report::new("density", config(args));
    report.meta.insert(
        "window".into(),
        Value::Object(window_fields(args.window_index, &window)),
    );
    report.meta.insert("k".into(), Value::from(k));
    report.meta.insert("a".into(), nums(approx.coefficients()));
    report.meta.insert("clipped_mass".into(), num(eta.clipped_mass));
    report.meta.insert("error_estimate".into(), num(eta.error_estimate));
    report.meta.insert("mass".into(), num(eta.mass()));
    report.records = eta
        .grid
        .iter()
        .zip(&eta.density)
        .map(|(&p, &d)| {
            let mut r = Record::new();
            r.insert("price".into(), num(p));
            r.insert("density".into(), num(d));
            r
        })
        .collect();
    write_report(&report, &args.common)
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.spec).map_err(|e| CliError::Usage(format!("{}: {e}", args.spec.display())))?;
    let mut spec: TapeSpec = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: invalid tape spec: {e}", args.spec.display())))?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    spec.validate()?;
    let tape = generate(&spec)?;
    let out = open_output(args.out.as_deref())?;
    write_tape(out, &tape, tape_kind(args.format))?;
    if let Some(path) = &args.out {
        let meta = sidecar_path(path);
        let file = File::create(&meta).map_err(|e| CliError::Usage(format!("{}: {e}", meta.display())))?;
        TapeMetadata::for_spec(&spec).write_json(std::io::BufWriter::new(file))?;
    }
    Ok(())
}

/// `<out>.meta.json`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn agent_tapes(args: &AggregateArgs) -> Result<Vec<AgentTape<f64>>, CliError> {
    let mut tapes = Vec::new();
    for path in &args.input {
        let records = read_records(path, &args.common)?;
        let stem = path
            .file_stem()
            .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
        tapes.extend(AgentTape::from_records(records, &stem));
    }
    Ok(tapes)
}

fn sums_record(sums: &PowerSums<f64>) -> Record {
    let mut r = Record::new();
    r.insert("n".into(), Value::from(sums.count()));
    r.insert("c".into(), nums(&sums.value_sums()));
    r.insert("u".into(), nums(&sums.volume_sums()));
    r
}

pub fn aggregate(args: &AggregateArgs) -> Result<(), CliError> {
    let width = validate_common(&args.common)?;
    let n_max = args.common.nmax as usize;
    let weight = args.weight.map(|w| match w {
        WeightArg::Value => Weight::Value,
        WeightArg::Volume => Weight::Volume,
        WeightArg::Count => Weight::Count,
    });
    let tapes = agent_tapes(args)?;
    if let Some(missing) = weight.and(tapes.iter().find(|t| t.expectations.is_none())) {
        return Err(Error::MissingExpectations {
            agent: missing.agent_id.clone(),
        }
        .into());
    }

    // Windows span the merged timeline of all agents.
    let mut merged: Vec<Tick> = tapes.iter().flat_map(|t| t.ticks.iter().copied()).collect();
    merged.sort_by_key(|t| t.timestamp);
    let specs: Vec<_> = windows(merged, width, &args.common)?
        .iter()
        .map(|w| *w.spec())
        .collect();

    let records = specs
        .par_iter()
        .enumerate()
        .map(|(i, spec)| -> Result<Record, Error> {
            let mut r = Record::new();
            r.insert("window".into(), Value::from(i));
            r.insert("start_ns".into(), Value::from(spec.start().0));
            r.insert("end_ns".into(), Value::from(spec.end().0));
            match aggregate_macro(&tapes, spec, n_max) {
                Ok(m) => {
                    let agents = m
                        .per_agent
                        .iter()
                        .map(|(id, s)| (id.clone(), Value::Object(sums_record(s))));
                    r.insert("totals".into(), Value::Object(sums_record(&m.totals)));
                    r.insert("agents".into(), Value::Object(agents.collect()));
                    let e = match weight {
                        Some(w) => num(weighted_expectation(&tapes, spec, w, args.power as usize)?),
                        None => Value::Null,
                    };
                    r.insert("weighted_expectation".into(), e);
                }
                Err(Error::EmptyWindowAll) => {
                    r.insert("totals".into(), Value::Null);
                    r.insert("agents".into(), Value::Null);
                    r.insert("weighted_expectation".into(), Value::Null);
                }
                Err(e) => return Err(e),
            }
            Ok(r)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut report = Report::new("aggregate", config(args));
    report.records = records;
    write_report(&report, &args.common)
}
