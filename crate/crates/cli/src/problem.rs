use std::path::Path;

use vmet::{io, scenarios, CovarianceModel, DistanceMetric, KernelFamily, Locations, ProblemSpec};

use crate::args::{BuiltinScenario, KernelArgs, ProblemArgs};
use crate::error::CliError;

/// A limit given either as one number for every coordinate or as a file of n numbers.
pub fn parse_limit(s: &str, n: usize) -> Result<Vec<f64>, CliError> {
    if let Ok(v) = s.trim().parse::<f64>() {
        if v.is_nan() {
            return Err(CliError::usage("limits must not be NaN"));
        }
        return Ok(vec![v; n]);
    }
    let path = Path::new(s);
    if !path.exists() {
        return Err(CliError::usage(format!("limit '{s}' is neither a number nor a file")));
    }
    let col = io::read_locations_csv(path)?;
    if col.dim() != 1 || col.len() != n {
        return Err(CliError::usage(format!(
            "limit file {s} has {} rows × {} columns, expected {n} × 1",
            col.len(),
            col.dim()
        )));
    }
    Ok(col.as_slice().to_vec())
}

fn parse_metric(s: &str) -> Result<DistanceMetric, CliError> {
    match s.to_ascii_lowercase().as_str() {
        "euclidean" => Ok(DistanceMetric::Euclidean),
        "chordal" => Ok(DistanceMetric::Chordal),
        other => Err(CliError::usage(format!("unknown metric '{other}'"))),
    }
}

/// Matérn model at `locs` from the kernel flags.
pub fn kernel_model(k: &KernelArgs, locs: Locations) -> Result<CovarianceModel, CliError> {
    let family: KernelFamily = k.kernel.parse()?;
    if !family.is_coordinate_based() {
        return Err(CliError::usage(format!("--kernel {} needs --covariance or --scenario, not locations", k.kernel)));
    }
    let dim = locs.dim();
    let mut model = CovarianceModel::matern(family, k.variance, k.range[0], k.nugget.unwrap_or(0.0), locs)?;
    match &k.range_groups {
        Some(groups) => {
            if groups.len() != dim {
                return Err(CliError::usage(format!("--range-groups has {} entries for {dim} coordinates", groups.len())));
            }
            model = model.with_anisotropy(groups.clone(), k.range.clone())?;
        }
        None if k.range.len() > 1 => return Err(CliError::usage("several --range values need --range-groups")),
        None => {}
    }
    let metric = parse_metric(&k.metric)?;
    if metric != DistanceMetric::Euclidean {
        model = model.with_metric(metric)?;
    }
    Ok(model)
}

/// Σ and default limits (a, b) from the problem flags, before --lower/--upper.
fn base_problem(p: &ProblemArgs, seed: u64) -> Result<(CovarianceModel, Vec<f64>, Vec<f64>), CliError> {
    let inf = f64::INFINITY;
    let need_n = |what: &str| p.n.ok_or_else(|| CliError::usage(format!("{what} needs --n")));
    if let Some(sc) = p.scenario {
        let n = need_n("--scenario")?;
        let spec = match sc {
            BuiltinScenario::One => scenarios::scenario_problem(scenarios::Scenario::GridOrthant, n, seed)?,
            BuiltinScenario::Two => scenarios::scenario_problem(scenarios::Scenario::LatinHypercube, n, seed)?,
            BuiltinScenario::Three => scenarios::scenario_problem(scenarios::Scenario::GridCentered, n, seed)?,
            BuiltinScenario::ConstCorr => scenarios::constant_correlation_problem(n, p.rho, 0.0)?,
        };
        return Ok((spec.covariance().clone(), spec.lower().to_vec(), spec.upper().to_vec()));
    }
    if p.identity {
        let n = need_n("--identity")?;
        return Ok((CovarianceModel::constant_correlation(n, 0.0)?, vec![-inf; n], vec![inf; n]));
    }
    if let Some(path) = &p.locations {
        let model = kernel_model(&p.kernel, io::read_locations_csv(path)?)?;
        let n = model.n();
        return Ok((model, vec![-inf; n], vec![inf; n]));
    }
    if let Some(path) = &p.covariance {
        let (n, m) = io::read_matrix_csv(path)?;
        return Ok((CovarianceModel::dense(n, m)?, vec![-inf; n], vec![inf; n]));
    }
    Err(CliError::usage("give one of --scenario, --identity, --locations or --covariance"))
}

pub fn build_spec(p: &ProblemArgs, seed: u64) -> Result<ProblemSpec, CliError> {
    let (model, mut a, mut b) = base_problem(p, seed)?;
    let n = model.n();
    if let Some(s) = &p.lower {
        a = parse_limit(s, n)?;
    }
    if let Some(s) = &p.upper {
        b = parse_limit(s, n)?;
    }
    Ok(ProblemSpec::new(model, a, b)?)
}

/// Region flags lo1,..,lod,hi1,..,hid.
pub fn parse_region(v: &[f64]) -> Result<vmet::Region, CliError> {
    if v.is_empty() || v.len() % 2 != 0 {
        return Err(CliError::usage("--region needs lo1,..,lod,hi1,..,hid"));
    }
    let d = v.len() / 2;
    Ok(vmet::Region::new(v[..d].to_vec(), v[d..].to_vec())?)
}
