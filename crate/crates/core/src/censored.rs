//! Partially censored Gaussian-process data: likelihood, parameter fitting,
//! regional posterior sampling and kriging with imputed values.
//!
//! A value below its detection threshold b_i is recorded only as "censored".
//! With observed variables ordered first, the likelihood is the Vecchia density
//! of the observed values times the Vecchia-approximate probability that the
//! censored ones fall below their thresholds given the observed ones. The
//! latter is estimated by the tilted integrand with every observed coordinate
//! fixed at its value.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::SampleBatch;
use crate::kernels::{CovarianceModel, Locations};
use crate::linalg;
use crate::normal;
use crate::problem::ProblemSpec;
use crate::reorder::{Permutation, ReorderMethod};
use crate::rng::{self, Stream};
use crate::sampler::{self, EstimateOptions, PreparedProblem};
use crate::vecchia::{ConditioningSets, VecchiaFactor};

/// Observed values with detection thresholds; NaN marks a censored entry.
#[derive(Clone, Debug, PartialEq)]
pub struct CensoredDataset {
    locations: Locations,
    values: Vec<f64>,
    thresholds: Vec<f64>,
}

impl CensoredDataset {
    /// Observed values must exceed their thresholds; censored entries need a
    /// finite threshold.
    pub fn new(locations: Locations, values: Vec<f64>, thresholds: Vec<f64>) -> Result<Self> {
        let n = locations.len();
        if values.len() != n || thresholds.len() != n {
            return Err(Error::data(format!(
                "{n} locations but {} values and {} thresholds",
                values.len(),
                thresholds.len()
            )));
        }
        for i in 0..n {
            let (z, b) = (values[i], thresholds[i]);
            if b.is_nan() || b == f64::INFINITY {
                return Err(Error::data(format!("threshold {i} is {b}")));
            }
            if z.is_nan() {
                if !b.is_finite() {
                    return Err(Error::data(format!("censored entry {i} needs a finite threshold")));
                }
            } else if !z.is_finite() || z <= b {
                return Err(Error::data(format!("observed value {z} at {i} does not exceed its threshold {b}")));
            }
        }
        Ok(CensoredDataset { locations, values, thresholds })
    }

    /// Censor a complete field at `thresholds`.
    pub fn censor(locations: Locations, field: &[f64], thresholds: Vec<f64>) -> Result<Self> {
        let values = field.iter().zip(&thresholds).map(|(&x, &b)| if x > b { x } else { f64::NAN }).collect();
        Self::new(locations, values, thresholds)
    }

    /// CSV with a header naming columns x1..xd, value and threshold (any order).
    /// An empty value cell marks a censored entry.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let header = rdr.headers()?.clone();
        let find = |name: &str| header.iter().position(|h| h.eq_ignore_ascii_case(name));
        let vcol = find("value").ok_or_else(|| Error::data("missing 'value' column"))?;
        let tcol = find("threshold").ok_or_else(|| Error::data("missing 'threshold' column"))?;
        let mut xcols = Vec::new();
        for d in 1.. {
            match find(&format!("x{d}")) {
                Some(c) => xcols.push(c),
                None => break,
            }
        }
        if xcols.is_empty() {
            return Err(Error::data("missing coordinate columns x1..xd"));
        }
        let (mut coords, mut values, mut thresholds) = (Vec::new(), Vec::new(), Vec::new());
        let num = |s: &str, row: usize, what: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|e| Error::data(format!("row {row}, {what}: {e}")))
        };
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = k + 2;
            for &c in &xcols {
                coords.push(num(rec.get(c).unwrap_or(""), row, "coordinate")?);
            }
            let v = rec.get(vcol).unwrap_or("");
            values.push(if v.is_empty() || v.eq_ignore_ascii_case("na") { f64::NAN } else { num(v, row, "value")? });
            thresholds.push(num(rec.get(tcol).unwrap_or(""), row, "threshold")?);
        }
        Self::new(Locations::new(xcols.len(), coords)?, values, thresholds)
    }

    pub fn read_csv_path(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let d = self.locations.dim();
        let mut header: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
        header.push("value".into());
        header.push("threshold".into());
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = self.locations.row(i).iter().map(|c| format!("{c:.17e}")).collect();
            rec.push(if self.is_censored(i) { String::new() } else { format!("{:.17e}", self.values[i]) });
            rec.push(format!("{:.17e}", self.thresholds[i]));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn locations(&self) -> &Locations {
        &self.locations
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn is_censored(&self, i: usize) -> bool {
        self.values[i].is_nan()
    }

    pub fn censored_mask(&self) -> Vec<bool> {
        self.values.iter().map(|v| v.is_nan()).collect()
    }

    pub fn observed_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| !self.is_censored(i)).collect()
    }

    pub fn censored_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.is_censored(i)).collect()
    }

    /// Values with each censored entry replaced by its threshold.
    pub fn lod_values(&self) -> Vec<f64> {
        self.values.iter().zip(&self.thresholds).map(|(&v, &b)| if v.is_nan() { b } else { v }).collect()
    }

    fn check_model(&self, model: &CovarianceModel) -> Result<()> {
        if model.n() != self.n() {
            return Err(Error::param(format!("model has {} variables, data has {}", model.n(), self.n())));
        }
        Ok(())
    }
}

/// Variance, ranges (one per coordinate group) and nugget of a Matérn model.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelParams {
    pub variance: f64,
    pub ranges: Vec<f64>,
    pub nugget: f64,
}

impl KernelParams {
    pub fn of(model: &CovarianceModel) -> Self {
        KernelParams { variance: model.variance(), ranges: model.ranges().to_vec(), nugget: model.nugget() }
    }

    pub fn apply(&self, model: &CovarianceModel) -> Result<CovarianceModel> {
        model.with_params(self.variance, &self.ranges, self.nugget)
    }

    fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.variance];
        v.extend_from_slice(&self.ranges);
        v.push(self.nugget);
        v
    }

    fn from_vec(v: &[f64]) -> Self {
        KernelParams { variance: v[0], ranges: v[1..v.len() - 1].to_vec(), nugget: v[v.len() - 1] }
    }
}

/// Exact Vecchia log-density of the first `k` variables of `x` under `factor`.
fn leading_log_density(factor: &VecchiaFactor, x: &[f64], k: usize) -> f64 {
    let l = factor.l();
    (0..k)
        .map(|i| {
            let mu = factor.cond_mean(x, i);
            normal::log_pdf((x[i] - mu) / l[i]) - l[i].ln()
        })
        .sum()
}

/// Observed-first ordering and the box (fixed at z for observed, (−∞, b] for censored).
fn censored_problem(data: &CensoredDataset, model: &CovarianceModel) -> Result<(ProblemSpec, Permutation, usize)> {
    let obs = data.observed_indices();
    let n1 = obs.len();
    let mut order = obs;
    order.extend(data.censored_indices());
    let lower = (0..data.n()).map(|i| if data.is_censored(i) { f64::NEG_INFINITY } else { data.values[i] }).collect();
    let upper = (0..data.n()).map(|i| if data.is_censored(i) { data.thresholds[i] } else { data.values[i] }).collect();
    Ok((ProblemSpec::with_fixed(model.clone(), lower, upper)?, Permutation::new(order)?, n1))
}

/// ln f(z): Vecchia log-density of the observed values plus the log of the
/// estimated conditional probability of the censored block, using `n_samples`
/// pseudo-random draws from `seed`. No reordering, so the value is a smooth
/// function of the kernel parameters for a fixed seed.
pub fn censored_loglik(
    data: &CensoredDataset,
    model: &CovarianceModel,
    m: usize,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    data.check_model(model)?;
    let (spec, perm, n1) = censored_problem(data, model)?;
    let opts = EstimateOptions { reorder: ReorderMethod::None, seed, ..Default::default() };
    if n1 == data.n() {
        let permuted = spec.permuted(&perm)?;
        let factor = VecchiaFactor::build(permuted.covariance(), m)?;
        return Ok(leading_log_density(&factor, &perm.apply(&data.values), n1));
    }
    let prepared = PreparedProblem::with_permutation(&spec, m, perm.clone(), &opts)?;
    let x = perm.apply(&data.values);
    let dens = leading_log_density(prepared.factor(), &x, n1);
    let prob = prepared.estimate(n_samples, seed, false, 0)?.log_estimate;
    Ok(dens + prob)
}

/// Gaussian Vecchia log-likelihood of the data with censored entries replaced
/// by their thresholds (the LOD-substitution baseline).
pub fn lod_loglik(data: &CensoredDataset, model: &CovarianceModel, m: usize) -> Result<f64> {
    data.check_model(model)?;
    Ok(VecchiaFactor::build(model, m)?.log_density(&data.lod_values()))
}

/// Which likelihood a fit or profile maximizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Likelihood {
    Censored,
    Lod,
}

#[derive(Clone, Debug)]
pub struct FitOptions {
    pub m: usize,
    pub n_samples: usize,
    pub seed: u64,
    pub max_evals: usize,
    /// Simplex size (in log parameters) below which the search stops.
    pub xtol: f64,
    /// Spread of objective values across the simplex below which the search stops.
    pub ftol: f64,
    /// Initial simplex edge in log parameters.
    pub step: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { m: 30, n_samples: 10_000, seed: 0, max_evals: 400, xtol: 1e-3, ftol: 1e-4, step: 0.3 }
    }
}

/// Inclusive bounds; a parameter with equal bounds is held fixed.
#[derive(Clone, Debug)]
pub struct ParamBounds {
    pub lower: KernelParams,
    pub upper: KernelParams,
}

#[derive(Clone, Debug, Serialize)]
pub struct FitResult {
    pub params: KernelParams,
    pub loglik: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Best log-likelihood after each simplex iteration.
    pub trace: Vec<f64>,
}

/// Log-likelihood of `data` under `model` for the chosen likelihood.
pub fn loglik(
    data: &CensoredDataset,
    model: &CovarianceModel,
    which: Likelihood,
    options: &FitOptions,
) -> Result<f64> {
    match which {
        Likelihood::Censored => censored_loglik(data, model, options.m, options.n_samples, options.seed),
        Likelihood::Lod => lod_loglik(data, model, options.m),
    }
}

/// Maximize the likelihood over (variance, ranges, nugget) by Nelder–Mead on
/// log parameters, starting from `init`. Every evaluation reuses `options.seed`.
pub fn fit_params(
    data: &CensoredDataset,
    template: &CovarianceModel,
    init: &KernelParams,
    bounds: &ParamBounds,
    which: Likelihood,
    options: &FitOptions,
) -> Result<FitResult> {
    data.check_model(template)?;
    let (x0, lo, hi) = (init.to_vec(), bounds.lower.to_vec(), bounds.upper.to_vec());
    if x0.len() != lo.len() || x0.len() != hi.len() {
        return Err(Error::param("bounds and initial parameters have different shapes"));
    }
    let free: Vec<usize> = (0..x0.len()).filter(|&k| lo[k] < hi[k]).collect();
    for k in 0..x0.len() {
        if !(x0[k] >= lo[k] && x0[k] <= hi[k]) {
            return Err(Error::param(format!("initial parameter {k} = {} is outside [{}, {}]", x0[k], lo[k], hi[k])));
        }
        if free.contains(&k) && !(lo[k] > 0.0) {
            return Err(Error::param(format!("free parameter {k} needs a positive lower bound")));
        }
    }
    let unpack = |t: &[f64]| -> Vec<f64> {
        let mut v = x0.clone();
        for (&k, &tk) in free.iter().zip(t) {
            v[k] = tk.exp();
        }
        v
    };
    let objective = |t: &[f64]| -> f64 {
        let v = unpack(t);
        if free.iter().any(|&k| v[k] < lo[k] || v[k] > hi[k]) {
            return f64::INFINITY;
        }
        match KernelParams::from_vec(&v).apply(template).and_then(|m| loglik(data, &m, which, options)) {
            Ok(l) if l.is_finite() => -l,
            _ => f64::INFINITY,
        }
    };
    let t0: Vec<f64> = free.iter().map(|&k| x0[k].ln()).collect();
    let nm = nelder_mead(objective, &t0, options);
    if !nm.f.is_finite() {
        return Err(Error::Optimization("likelihood is not finite anywhere on the simplex".into()));
    }
    Ok(FitResult {
        params: KernelParams::from_vec(&unpack(&nm.x)),
        loglik: -nm.f,
        evaluations: nm.evals,
        iterations: nm.iters,
        converged: nm.converged,
        trace: nm.trace.into_iter().map(|f| -f).collect(),
    })
}

struct Simplex {
    x: Vec<f64>,
    f: f64,
    evals: usize,
    iters: usize,
    converged: bool,
    trace: Vec<f64>,
}

/// Standard Nelder–Mead (reflection 1, expansion 2, contraction ½, shrink ½).
fn nelder_mead(mut f: impl FnMut(&[f64]) -> f64, x0: &[f64], opts: &FitOptions) -> Simplex {
    let d = x0.len();
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        f(x)
    };
    if d == 0 {
        let fx = eval(x0, &mut evals);
        return Simplex { x: Vec::new(), f: fx, evals, iters: 0, converged: true, trace: vec![fx] };
    }
    let mut pts: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    pts.push((x0.to_vec(), eval(x0, &mut evals)));
    for k in 0..d {
        let mut x = x0.to_vec();
        x[k] += opts.step;
        let mut fx = eval(&x, &mut evals);
        if !fx.is_finite() {
            x[k] = x0[k] - opts.step;
            fx = eval(&x, &mut evals);
        }
        pts.push((x, fx));
    }
    let mut trace = Vec::new();
    let mut iters = 0;
    let mut converged = false;
    while evals < opts.max_evals {
        pts.sort_by(|a, b| a.1.total_cmp(&b.1));
        trace.push(pts[0].1);
        let spread = pts[d].1 - pts[0].1;
        let size = pts[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&pts[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max);
        if pts[0].1.is_finite() && spread <= opts.ftol && size <= opts.xtol {
            converged = true;
            break;
        }
        iters += 1;
        let centroid: Vec<f64> = (0..d).map(|k| pts[..d].iter().map(|p| p.0[k]).sum::<f64>() / d as f64).collect();
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&pts[d].0).map(|(c, w)| c + t * (c - w)).collect() };
        let xr = along(1.0);
        let fr = eval(&xr, &mut evals);
        if fr < pts[0].1 {
            let xe = along(2.0);
            let fe = eval(&xe, &mut evals);
            pts[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < pts[d - 1].1 {
            pts[d] = (xr, fr);
        } else {
            let (xc, fc) = if fr < pts[d].1 {
                let xc = along(0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = along(-0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            };
            if fc < pts[d].1.min(fr) {
                pts[d] = (xc, fc);
            } else {
                let best = pts[0].0.clone();
                for p in pts.iter_mut().skip(1) {
                    p.0 = best.iter().zip(&p.0).map(|(b, x)| b + 0.5 * (x - b)).collect();
                    p.1 = eval(&p.0, &mut evals);
                }
            }
        }
    }
    pts.sort_by(|a, b| a.1.total_cmp(&b.1));
    if trace.last() != Some(&pts[0].1) {
        trace.push(pts[0].1);
    }
    let (x, fx) = pts.swap_remove(0);
    Simplex { x, f: fx, evals, iters, converged, trace }
}

/// Log-likelihood along a grid of values for range group `group`, other
/// parameters as in `model`.
pub fn profile_range(
    data: &CensoredDataset,
    model: &CovarianceModel,
    group: usize,
    values: &[f64],
    which: Likelihood,
    options: &FitOptions,
) -> Result<Vec<f64>> {
    let base = KernelParams::of(model);
    if group >= base.ranges.len() {
        return Err(Error::param(format!("range group {group} does not exist")));
    }
    values
        .iter()
        .map(|&v| {
            let mut p = base.clone();
            p.ranges[group] = v;
            loglik(data, &p.apply(model)?, which, options)
        })
        .collect()
}

/// Axis-aligned box in location coordinates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Region {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Region {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.iter().zip(&upper).any(|(a, b)| !(a <= b)) {
            return Err(Error::param("region needs lower ≤ upper in every coordinate"));
        }
        Ok(Region { lower, upper })
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter().zip(&self.lower).zip(&self.upper).all(|((x, a), b)| x >= a && x <= b)
    }

    /// Grown by `buffer` on every side.
    pub fn expanded(&self, buffer: f64) -> Region {
        Region {
            lower: self.lower.iter().map(|a| a - buffer).collect(),
            upper: self.upper.iter().map(|b| b + buffer).collect(),
        }
    }

    /// Grown by 20% of its side length in each coordinate.
    pub fn with_default_buffer(&self) -> Region {
        let side = |k: usize| 0.2 * (self.upper[k] - self.lower[k]);
        Region {
            lower: self.lower.iter().enumerate().map(|(k, a)| a - side(k)).collect(),
            upper: self.upper.iter().enumerate().map(|(k, b)| b + side(k)).collect(),
        }
    }
}

/// Posterior draws at a subset of the censored locations.
#[derive(Clone, Debug, Serialize)]
pub struct ImputedSamples {
    /// Dataset indices of the sampled censored locations.
    pub indices: Vec<usize>,
    /// One row per draw, one column per entry of `indices`.
    pub batch: SampleBatch,
}

impl ImputedSamples {
    /// Per-location mean of the draws.
    pub fn mean(&self) -> Vec<f64> {
        let k = self.batch.samples.len() as f64;
        (0..self.indices.len()).map(|j| self.batch.samples.iter().map(|r| r[j]).sum::<f64>() / k).collect()
    }
}

/// TMVN draws of the censored values inside `region` grown by `buffer`
/// (20% of the side length when `None`), conditioning exactly on every
/// observed value. Censored locations outside the grown region are ignored.
#[allow(clippy::too_many_arguments)]
pub fn regional_sample(
    data: &CensoredDataset,
    model: &CovarianceModel,
    region: &Region,
    buffer: Option<f64>,
    m: usize,
    target_k: usize,
    max_attempts: usize,
    options: &EstimateOptions,
) -> Result<ImputedSamples> {
    data.check_model(model)?;
    if region.lower.len() != data.locations.dim() {
        return Err(Error::param("region dimension does not match the locations"));
    }
    let grown = match buffer {
        Some(b) if b >= 0.0 => region.expanded(b),
        Some(b) => return Err(Error::param(format!("buffer must be non-negative, got {b}"))),
        None => region.with_default_buffer(),
    };
    let sel: Vec<usize> =
        data.censored_indices().into_iter().filter(|&i| grown.contains(data.locations.row(i))).collect();
    sample_selection(data, model, sel, m, target_k, max_attempts, options)
}

/// TMVN draws of all censored values given the observed ones.
pub fn global_sample(
    data: &CensoredDataset,
    model: &CovarianceModel,
    m: usize,
    target_k: usize,
    max_attempts: usize,
    options: &EstimateOptions,
) -> Result<ImputedSamples> {
    data.check_model(model)?;
    sample_selection(data, model, data.censored_indices(), m, target_k, max_attempts, options)
}

fn sample_selection(
    data: &CensoredDataset,
    model: &CovarianceModel,
    sel: Vec<usize>,
    m: usize,
    target_k: usize,
    max_attempts: usize,
    options: &EstimateOptions,
) -> Result<ImputedSamples> {
    if sel.is_empty() {
        return Err(Error::data("no censored locations in the selected region"));
    }
    let mut vars = data.observed_indices();
    vars.extend_from_slice(&sel);
    vars.sort_unstable();
    let sub = model.select(&vars)?;
    let lower = vars.iter().map(|&i| if data.is_censored(i) { f64::NEG_INFINITY } else { data.values[i] }).collect();
    let upper = vars.iter().map(|&i| if data.is_censored(i) { data.thresholds[i] } else { data.values[i] }).collect();
    let spec = ProblemSpec::with_fixed(sub, lower, upper)?;
    let batch = sampler::sample_tmvn(&spec, m, target_k, max_attempts, options)?;
    let cols: Vec<usize> = sel.iter().map(|i| vars.binary_search(i).expect("selected index is a variable")).collect();
    let samples = batch.samples.iter().map(|row| cols.iter().map(|&c| row[c]).collect()).collect();
    Ok(ImputedSamples { indices: sel, batch: SampleBatch { samples, ..batch } })
}

/// Predictions at test locations.
#[derive(Clone, Debug, Serialize)]
pub struct Prediction {
    pub mean: Vec<f64>,
    /// Predictive standard deviation: spread across draws plus conditional variance.
    pub sd: Vec<f64>,
    /// Prediction for each imputed draw (rows) at each test location (columns).
    pub per_sample: Vec<Vec<f64>>,
}

/// Kriging at `test` from the observed values plus each imputed draw; test
/// points condition on their m nearest data locations.
pub fn krige_predict(
    data: &CensoredDataset,
    imputed: &ImputedSamples,
    model: &CovarianceModel,
    test: &Locations,
    m: usize,
) -> Result<Prediction> {
    data.check_model(model)?;
    if imputed.batch.samples.is_empty() {
        return Err(Error::data("no imputed samples to krige from"));
    }
    let mut idx = data.observed_indices();
    idx.extend_from_slice(&imputed.indices);
    let obs_vals: Vec<f64> = data.observed_indices().iter().map(|&i| data.values[i]).collect();
    let ys: Vec<Vec<f64>> = imputed
        .batch
        .samples
        .iter()
        .map(|s| obs_vals.iter().chain(s).copied().collect())
        .collect();
    krige(&model.select(&idx)?, &ys, test, m)
}

/// Kriging from the LOD-substituted data (all locations, thresholds for censored values).
pub fn krige_lod(data: &CensoredDataset, model: &CovarianceModel, test: &Locations, m: usize) -> Result<Prediction> {
    data.check_model(model)?;
    krige(model, &[data.lod_values()], test, m)
}

fn krige(data_model: &CovarianceModel, ys: &[Vec<f64>], test: &Locations, m: usize) -> Result<Prediction> {
    let nd = data_model.n();
    let ext = data_model.extended_with(test)?;
    let nt = test.len();
    let sets = ConditioningSets::build_restricted(&ext, m, nd)?;
    let weights: Vec<(Vec<usize>, Vec<f64>, f64)> = (0..nt)
        .into_par_iter()
        .map(|t| {
            let ti = nd + t;
            let c = sets.get(ti).to_vec();
            let k = c.len();
            let mut s = ext.block(&c);
            let mut w: Vec<f64> = c.iter().map(|&j| ext.cov(j, ti)).collect();
            let rhs = w.clone();
            linalg::cholesky_in_place(&mut s, k).map_err(|p| Error::Factorization {
                index: ti,
                reason: format!("neighbor covariance of test point {t} is singular at pivot {p}"),
            })?;
            linalg::forward_solve(&s, k, &mut w);
            linalg::backward_solve(&s, k, &mut w);
            let var = (ext.cov(ti, ti) - linalg::dot(&w, &rhs)).max(0.0);
            Ok((c, w, var))
        })
        .collect::<Result<_>>()?;
    let per_sample: Vec<Vec<f64>> = ys
        .iter()
        .map(|y| weights.iter().map(|(c, w, _)| c.iter().zip(w).map(|(&j, wj)| wj * y[j]).sum()).collect())
        .collect();
    let k = ys.len() as f64;
    let mean: Vec<f64> = (0..nt).map(|t| per_sample.iter().map(|p| p[t]).sum::<f64>() / k).collect();
    let sd = (0..nt)
        .map(|t| {
            let spread = if ys.len() > 1 {
                per_sample.iter().map(|p| (p[t] - mean[t]).powi(2)).sum::<f64>() / (k - 1.0)
            } else {
                0.0
            };
            (spread + weights[t].2).sqrt()
        })
        .collect();
    Ok(Prediction { mean, sd, per_sample })
}

/// Largest n simulated exactly through a dense Cholesky factor.
pub const DENSE_SIMULATION_MAX_N: usize = 2000;
/// Conditioning-set size for Vecchia simulation above that size.
pub const SIMULATION_M: usize = 30;

/// A latent field and the dataset obtained by censoring it.
#[derive(Clone, Debug)]
pub struct SyntheticCensored {
    pub data: CensoredDataset,
    pub truth: Vec<f64>,
}

/// Draw x ~ N(0, Σ) at the model's locations and censor it at `thresholds`.
pub fn simulate_censored(model: &CovarianceModel, thresholds: Vec<f64>, seed: u64) -> Result<SyntheticCensored> {
    let locations = model
        .locations()
        .ok_or_else(|| Error::param("simulation needs a location-based model"))?
        .clone();
    let truth = simulate_field(model, seed)?;
    let data = CensoredDataset::censor(locations, &truth, thresholds)?;
    Ok(SyntheticCensored { data, truth })
}

/// One draw from N(0, Σ): exact for n ≤ 2000, Vecchia (m = 30) above.
pub fn simulate_field(model: &CovarianceModel, seed: u64) -> Result<Vec<f64>> {
    let n = model.n();
    let mut r = rng::stream_rng(seed, Stream::Data, 7);
    let z: Vec<f64> = (0..n).map(|_| rng::std_normal(&mut r)).collect();
    if n <= DENSE_SIMULATION_MAX_N {
        let mut l = model.dense_matrix();
        linalg::cholesky_in_place(&mut l, n)
            .map_err(|p| Error::Factorization { index: p, reason: "covariance is not positive definite".into() })?;
        Ok((0..n).map(|i| (0..=i).map(|j| l[i * n + j] * z[j]).sum()).collect())
    } else {
        Ok(VecchiaFactor::build(model, SIMULATION_M)?.simulate(&z))
    }
}
