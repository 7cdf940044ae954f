use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use vmet::censored::{self, FitOptions, ImputedSamples, ParamBounds};
use vmet::{
    estimate_multilevel, reference, CensoredDataset, EstimateOptions, KernelParams, Locations, PreparedProblem,
    ProbabilityEstimate, ReorderMethod, SampleBatch,
};

use crate::args::{BenchArgs, CensoredCommand, DataArgs, MethodArgs, MvnprobArgs, Sweep, TmvnArgs};
use crate::error::CliError;
use crate::problem::{build_spec, kernel_model, parse_region};

/// What `mvnprob` prints.
#[derive(Serialize)]
struct EstimateJson {
    log_estimate: f64,
    estimate: f64,
    std_error: f64,
    log_std_error: f64,
    n: usize,
    m: usize,
    #[serde(rename = "N")]
    n_samples: usize,
    reorder: String,
    seed: u64,
    elapsed_sec: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    acceptance_rate: Option<f64>,
    method: &'static str,
    ess: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    bias_correction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    m2: Option<usize>,
    #[serde(rename = "N2", skip_serializing_if = "Option::is_none")]
    n2: Option<usize>,
}

/// One JSON object per line; serde_json writes non-finite floats as null.
fn json_line<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable output")
}

fn options(method: &MethodArgs) -> EstimateOptions {
    EstimateOptions { reorder: method.reorder, seed: method.seed, tilt: !method.no_tilt, ..Default::default() }
}

pub fn mvnprob(args: &MvnprobArgs) -> Result<String, CliError> {
    let spec = build_spec(&args.problem, args.method.seed)?;
    let n = spec.n();
    let start = Instant::now();
    let mut opts = options(&args.method);
    opts.qmc = args.qmc;
    opts.qmc_shifts = args.qmc_shifts;
    let (est, method, m, reorder): (ProbabilityEstimate, _, _, _) = if args.oracle.is_some() {
        let sigma = spec.covariance().dense_matrix();
        let (a, b) = spec.centered_limits();
        let est = reference::dense_sov_estimate(&sigma, n, &a, &b, args.n_samples, args.method.seed)?;
        (est, "sov-oracle", n.saturating_sub(1), ReorderMethod::None)
    } else if let Some(m2) = args.m2 {
        let n2 = args.n2.unwrap_or(args.n_samples / 10).max(2);
        let est = estimate_multilevel(&spec, args.method.m, m2, args.n_samples, n2, &opts)?;
        (est, "multilevel", args.method.m, args.method.reorder)
    } else {
        let prepared = PreparedProblem::new(&spec, args.method.m, &opts)?;
        let est = prepared.estimate(args.n_samples, opts.seed, opts.qmc, opts.qmc_shifts)?;
        let method = if args.qmc { "vmet-qmc" } else { "vmet" };
        (est, method, args.method.m, args.method.reorder)
    };
    let out = EstimateJson {
        log_estimate: est.log_estimate,
        estimate: est.estimate,
        std_error: est.std_error,
        log_std_error: est.log_std_error,
        n,
        m,
        n_samples: args.n_samples,
        reorder: reorder.to_string(),
        seed: args.method.seed,
        elapsed_sec: start.elapsed().as_secs_f64(),
        acceptance_rate: None,
        method,
        ess: est.ess,
        bias_correction: est.bias_correction,
        m2: args.m2,
        n2: args.m2.map(|_| args.n2.unwrap_or(args.n_samples / 10).max(2)),
    };
    Ok(json_line(&out))
}

#[derive(Serialize)]
struct SampleSummary {
    n: usize,
    m: usize,
    k: usize,
    accepted: usize,
    attempts: usize,
    acceptance_rate: f64,
    max_log_ratio: Option<f64>,
    reorder: String,
    seed: u64,
    elapsed_sec: f64,
    method: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    indices: Option<Vec<usize>>,
}

fn write_rows(out: &mut dyn Write, header: &[String], rows: &[Vec<f64>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn read_dataset(path: &Path) -> Result<CensoredDataset, CliError> {
    Ok(CensoredDataset::read_csv_path(path)?)
}

fn imputed_draws(
    data: &CensoredDataset,
    model: &vmet::CovarianceModel,
    region: Option<&[f64]>,
    buffer: Option<f64>,
    m: usize,
    k: usize,
    max_attempts: usize,
    opts: &EstimateOptions,
) -> Result<ImputedSamples, CliError> {
    Ok(match region {
        Some(r) => censored::regional_sample(data, model, &parse_region(r)?, buffer, m, k, max_attempts, opts)?,
        None => censored::global_sample(data, model, m, k, max_attempts, opts)?,
    })
}

/// Returns (CSV destination used, summary JSON).
pub fn tmvn(args: &TmvnArgs) -> Result<(bool, String), CliError> {
    let start = Instant::now();
    let opts = options(&args.method);
    let (batch, n, header, method, indices): (SampleBatch, usize, Vec<String>, _, _) = if let Some(path) = &args.data {
        let data = read_dataset(path)?;
        let model = kernel_model(&args.problem.kernel, data.locations().clone())?;
        let s = imputed_draws(
            &data,
            &model,
            args.region.as_deref(),
            args.buffer,
            args.method.m,
            args.k,
            args.max_attempts,
            &opts,
        )?;
        let header = s.indices.iter().map(|i| format!("x{i}")).collect();
        let method = if args.region.is_some() { "regional" } else { "global" };
        (s.batch, data.n(), header, method, Some(s.indices))
    } else {
        let spec = build_spec(&args.problem, args.method.seed)?;
        let n = spec.n();
        let header = (0..n).map(|i| format!("x{i}")).collect();
        let batch = if args.oracle.is_some() {
            let (a, b) = (spec.lower(), spec.upper());
            reference::dense_rejection_sample(&spec.covariance().dense_matrix(), n, a, b, args.k, args.max_attempts, args.method.seed)?
        } else {
            vmet::sample_tmvn(&spec, args.method.m, args.k, args.max_attempts, &opts)?
        };
        let method = if args.oracle.is_some() { "rejection-oracle" } else { "vmet" };
        (batch, n, header, method, None)
    };
    let mut out = open_output(args.output.as_deref())?;
    write_rows(&mut out, &header, &batch.samples)?;
    let summary = SampleSummary {
        n,
        m: args.method.m,
        k: args.k,
        accepted: batch.len(),
        attempts: batch.attempts,
        acceptance_rate: batch.acceptance_rate,
        max_log_ratio: batch.max_log_ratio.is_finite().then_some(batch.max_log_ratio),
        reorder: args.method.reorder.to_string(),
        seed: args.method.seed,
        elapsed_sec: start.elapsed().as_secs_f64(),
        method,
        indices,
    };
    Ok((args.output.is_some(), json_line(&summary)))
}

fn fit_options(d: &DataArgs) -> FitOptions {
    FitOptions { m: d.m, n_samples: d.n_samples, seed: d.seed, ..Default::default() }
}

fn data_and_model(d: &DataArgs) -> Result<(CensoredDataset, vmet::CovarianceModel), CliError> {
    let data = read_dataset(&d.data)?;
    let model = kernel_model(&d.kernel, data.locations().clone())?;
    Ok((data, model))
}

fn params_from(v: &[f64], like: &KernelParams, what: &str) -> Result<KernelParams, CliError> {
    let want = like.ranges.len() + 2;
    if v.len() != want {
        return Err(CliError::usage(format!("{what} needs {want} values: variance, ranges, nugget")));
    }
    Ok(KernelParams { variance: v[0], ranges: v[1..want - 1].to_vec(), nugget: v[want - 1] })
}

pub fn censored(cmd: &CensoredCommand) -> Result<String, CliError> {
    match cmd {
        CensoredCommand::Loglik { data, profile, group } => {
            let (ds, model) = data_and_model(data)?;
            let opts = fit_options(data);
            let which = data.likelihood.into();
            let start = Instant::now();
            #[derive(Serialize)]
            struct Point {
                range: f64,
                loglik: f64,
            }
            #[derive(Serialize)]
            struct Out {
                likelihood: &'static str,
                n: usize,
                censored: usize,
                m: usize,
                #[serde(rename = "N")]
                n_samples: usize,
                seed: u64,
                params: KernelParams,
                #[serde(skip_serializing_if = "Option::is_none")]
                loglik: Option<f64>,
                #[serde(skip_serializing_if = "Option::is_none")]
                profile: Option<Vec<Point>>,
                elapsed_sec: f64,
            }
            let (loglik, profile) = match profile {
                Some(values) => {
                    let ll = censored::profile_range(&ds, &model, *group, values, which, &opts)?;
                    (None, Some(values.iter().zip(ll).map(|(&range, loglik)| Point { range, loglik }).collect()))
                }
                None => (Some(censored::loglik(&ds, &model, which, &opts)?), None),
            };
            Ok(json_line(&Out {
                likelihood: if which == censored::Likelihood::Censored { "censored" } else { "lod" },
                n: ds.n(),
                censored: ds.censored_indices().len(),
                m: data.m,
                n_samples: data.n_samples,
                seed: data.seed,
                params: KernelParams::of(&model),
                loglik,
                profile,
                elapsed_sec: start.elapsed().as_secs_f64(),
            }))
        }
        CensoredCommand::Fit { data, lower_bounds, upper_bounds, max_evals, trace } => {
            let (ds, model) = data_and_model(data)?;
            let init = KernelParams::of(&model);
            let lower = match lower_bounds {
                Some(v) => params_from(v, &init, "--lower-bounds")?,
                None => KernelParams {
                    variance: 1e-3,
                    ranges: vec![1e-3; init.ranges.len()],
                    nugget: init.nugget.min(1e-6),
                },
            };
            let upper = match upper_bounds {
                Some(v) => params_from(v, &init, "--upper-bounds")?,
                None => KernelParams { variance: 1e3, ranges: vec![1e2; init.ranges.len()], nugget: init.nugget.max(1e1) },
            };
            // a zero initial nugget stays fixed unless bounds say otherwise
            let mut lower = lower;
            if init.nugget == 0.0 && lower_bounds.is_none() {
                lower.nugget = 0.0;
            }
            let mut upper = upper;
            if init.nugget == 0.0 && upper_bounds.is_none() {
                upper.nugget = 0.0;
            }
            let opts = FitOptions { max_evals: *max_evals, ..fit_options(data) };
            let start = Instant::now();
            let fit = censored::fit_params(&ds, &model, &init, &ParamBounds { lower, upper }, data.likelihood.into(), &opts)?;
            if let Some(path) = trace {
                let rows: Vec<Vec<f64>> = fit.trace.iter().enumerate().map(|(i, l)| vec![i as f64, *l]).collect();
                write_rows(&mut File::create(path)?, &["iteration".into(), "loglik".into()], &rows)?;
            }
            #[derive(Serialize)]
            struct Out<'a> {
                #[serde(flatten)]
                fit: &'a censored::FitResult,
                elapsed_sec: f64,
            }
            Ok(json_line(&Out { fit: &fit, elapsed_sec: start.elapsed().as_secs_f64() }))
        }
        CensoredCommand::Predict { data, region, buffer, test, grid, k, max_attempts, output } => {
            let (ds, model) = data_and_model(data)?;
            let opts = EstimateOptions { seed: data.seed, ..Default::default() };
            let test_locs = match (test, grid, region) {
                (Some(p), _, _) => vmet::io::read_locations_csv(p)?,
                (None, Some(g), Some(r)) => {
                    let reg = parse_region(r)?;
                    if reg.lower.len() != 2 || *g < 2 {
                        return Err(CliError::usage("--grid needs a 2-D region and at least 2 points per side"));
                    }
                    let mut pts = Vec::with_capacity(g * g);
                    for iy in 0..*g {
                        for ix in 0..*g {
                            let t = |k: usize, i: usize| reg.lower[k] + (reg.upper[k] - reg.lower[k]) * i as f64 / (*g - 1) as f64;
                            pts.push([t(0, ix), t(1, iy)]);
                        }
                    }
                    Locations::from_rows(&pts)?
                }
                _ => return Err(CliError::usage("predict needs --test or --region with --grid")),
            };
            if test_locs.dim() != ds.locations().dim() {
                return Err(CliError::usage("test locations and data have different dimensions"));
            }
            let s = imputed_draws(&ds, &model, region.as_deref(), *buffer, data.m, *k, *max_attempts, &opts)?;
            let ours = censored::krige_predict(&ds, &s, &model, &test_locs, data.m)?;
            let lod = censored::krige_lod(&ds, &model, &test_locs, data.m)?;
            let d = test_locs.dim();
            let mut header: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
            header.extend(["mean", "sd", "lod_mean", "lod_sd"].map(String::from));
            let rows: Vec<Vec<f64>> = (0..test_locs.len())
                .map(|i| {
                    let mut r = test_locs.row(i).to_vec();
                    r.extend([ours.mean[i], ours.sd[i], lod.mean[i], lod.sd[i]]);
                    r
                })
                .collect();
            write_rows(&mut open_output(output.as_deref())?, &header, &rows)?;
            #[derive(Serialize)]
            struct Out {
                predictions: usize,
                imputed_locations: usize,
                draws: usize,
                acceptance_rate: f64,
            }
            Ok(json_line(&Out {
                predictions: test_locs.len(),
                imputed_locations: s.indices.len(),
                draws: s.batch.len(),
                acceptance_rate: s.batch.acceptance_rate,
            }))
        }
    }
}

pub fn bench(args: &BenchArgs) -> Result<(), CliError> {
    let mut rows: Vec<(String, usize, usize, usize, f64, f64)> = Vec::new();
    let opts = |seed| EstimateOptions { reorder: args.reorder, seed, ..Default::default() };
    match args.sweep {
        Sweep::ConstCorr => {
            let spec = vmet::scenarios::constant_correlation_problem(args.n, 0.5, 0.0)?;
            let truth = 1.0 / (args.n as f64 + 1.0);
            for &m in &args.ms {
                let (mut sq, mut secs) = (0.0, 0.0);
                for r in 0..args.replicates {
                    let est = vmet::estimate_mvn_prob(&spec, m, args.n_samples, &opts(args.seed + r as u64))?;
                    sq += ((est.estimate - truth) / truth).powi(2);
                    secs += est.elapsed_sec;
                }
                let k = args.replicates.max(1) as f64;
                rows.push((format!("vmet-{}", args.reorder), args.n, m, args.n_samples, (sq / k).sqrt(), secs / k));
            }
        }
        Sweep::Scaling => {
            for &n in &args.ns {
                let spec = vmet::scenarios::scenario_problem(vmet::scenarios::Scenario::GridOrthant, n, args.seed)?;
                let (mut rel, mut secs) = (0.0, 0.0);
                for r in 0..args.replicates {
                    let est = vmet::estimate_mvn_prob(&spec, args.m, args.n_samples, &opts(args.seed + r as u64))?;
                    rel += (est.log_std_error - est.log_estimate).exp();
                    secs += est.elapsed_sec;
                }
                let k = args.replicates.max(1) as f64;
                rows.push((format!("vmet-{}", args.reorder), n, args.m, args.n_samples, rel / k, secs / k));
            }
        }
        Sweep::Smoke => {
            let spec = vmet::scenarios::scenario_problem(vmet::scenarios::Scenario::GridOrthant, 100, args.seed)?;
            let est = vmet::estimate_mvn_prob(&spec, 10, 1000, &opts(args.seed))?;
            rows.push(("vmet-smoke".into(), 100, 10, 1000, (est.log_std_error - est.log_estimate).exp(), est.elapsed_sec));
        }
    }
    let mut w = csv::Writer::from_writer(open_output(args.output.as_deref())?);
    w.write_record(["config", "n", "m", "N", "rmse_proxy", "elapsed"])?;
    for (c, n, m, big_n, e, t) in rows {
        w.write_record([c, n.to_string(), m.to_string(), big_n.to_string(), e.to_string(), t.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
