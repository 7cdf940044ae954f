//! Built-in simulation scenarios: a Matérn-1.5 field on the unit square with
//! three location / limit patterns.
//!
//! | scenario | locations       | a   | b               |
//! |----------|-----------------|-----|-----------------|
//! | 1        | grid            | −∞  | 0               |
//! | 2        | Latin hypercube | −∞  | Uniform(−2, 0)  |
//! | 3        | grid            | −1  | 1               |

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{CovarianceModel, KernelFamily, Locations};
use crate::problem::ProblemSpec;
use crate::rng::{self, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    GridOrthant,
    LatinHypercube,
    GridCentered,
}

impl Scenario {
    pub fn from_number(k: u8) -> Result<Self> {
        match k {
            1 => Ok(Scenario::GridOrthant),
            2 => Ok(Scenario::LatinHypercube),
            3 => Ok(Scenario::GridCentered),
            _ => Err(Error::param(format!("scenario must be 1, 2 or 3, got {k}"))),
        }
    }
}

pub const SCENARIO_VARIANCE: f64 = 1.0;
pub const SCENARIO_RANGE: f64 = 0.1;

/// 0.01, raised to 0.03 from n = 6400 on to keep Σ well conditioned.
pub fn scenario_nugget(n: usize) -> f64 {
    if n >= 6400 {
        0.03
    } else {
        0.01
    }
}

/// rows × cols equispaced lattice on [0,1]², endpoints included, x fastest.
pub fn unit_lattice(rows: usize, cols: usize) -> Locations {
    let pos = |i: usize, k: usize| if k > 1 { i as f64 / (k - 1) as f64 } else { 0.0 };
    let mut coords = Vec::with_capacity(2 * rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            coords.push(pos(c, cols));
            coords.push(pos(r, rows));
        }
    }
    Locations::new(2, coords).expect("finite lattice")
}

/// The most nearly square lattice with exactly n points (√n × √n when n is a square).
pub fn grid_locations(n: usize) -> Locations {
    let mut rows = (n as f64).sqrt().floor() as usize;
    while rows > 1 && n % rows != 0 {
        rows -= 1;
    }
    let rows = rows.max(1);
    unit_lattice(rows, n / rows)
}

/// Latin hypercube sample of n points in [0,1]².
pub fn latin_hypercube(n: usize, seed: u64) -> Locations {
    let mut r = rng::stream_rng(seed, Stream::Data, 0);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(2);
    for _ in 0..2 {
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = r.random_range(0..=i);
            perm.swap(i, j);
        }
        cols.push(perm.into_iter().map(|p| (p as f64 + rng::open01(&mut r)) / n as f64).collect());
    }
    let coords = (0..n).flat_map(|i| [cols[0][i], cols[1][i]]).collect();
    Locations::new(2, coords).expect("finite coordinates")
}

/// The Matérn-1.5 scenario covariance at the given locations.
pub fn scenario_model(locations: Locations) -> Result<CovarianceModel> {
    let n = locations.len();
    CovarianceModel::matern(KernelFamily::Matern15, SCENARIO_VARIANCE, SCENARIO_RANGE, scenario_nugget(n), locations)
}

/// Problem instance for `scenario` with n variables; `seed` drives the random parts.
pub fn scenario_problem(scenario: Scenario, n: usize, seed: u64) -> Result<ProblemSpec> {
    if n == 0 {
        return Err(Error::param("scenario needs n ≥ 1"));
    }
    let inf = f64::INFINITY;
    match scenario {
        Scenario::GridOrthant => ProblemSpec::new(scenario_model(grid_locations(n))?, vec![-inf; n], vec![0.0; n]),
        Scenario::GridCentered => ProblemSpec::new(scenario_model(grid_locations(n))?, vec![-1.0; n], vec![1.0; n]),
        Scenario::LatinHypercube => {
            let locs = latin_hypercube(n, seed);
            let mut r = rng::stream_rng(seed, Stream::Data, 1);
            let b = (0..n).map(|_| -2.0 * rng::open01(&mut r)).collect();
            ProblemSpec::new(scenario_model(locs)?, vec![-inf; n], b)
        }
    }
}

/// Exchangeable-correlation orthant problem, whose probability is 1/(n+1) when
/// ρ = 0.5, a = −∞ and b = 0.
pub fn constant_correlation_problem(n: usize, rho: f64, upper: f64) -> Result<ProblemSpec> {
    ProblemSpec::new(CovarianceModel::constant_correlation(n, rho)?, vec![f64::NEG_INFINITY; n], vec![upper; n])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shapes() {
        let g = grid_locations(900);
        assert_eq!(g.len(), 900);
        assert_eq!(g.row(29), &[1.0, 0.0]);
        assert_eq!(g.row(899), &[1.0, 1.0]);
        let g = grid_locations(3200);
        assert_eq!(g.len(), 3200);
        assert_eq!(g.row(3199), &[1.0, 1.0]);
    }

    #[test]
    fn latin_hypercube_strata() {
        let l = latin_hypercube(50, 9);
        for d in 0..2 {
            let mut bins: Vec<usize> = (0..50).map(|i| (l.row(i)[d] * 50.0) as usize).collect();
            bins.sort_unstable();
            assert_eq!(bins, (0..50).collect::<Vec<_>>());
        }
    }

    #[test]
    fn scenario_limits() {
        let p = scenario_problem(Scenario::LatinHypercube, 30, 4).unwrap();
        assert!(p.upper().iter().all(|&b| (-2.0..0.0).contains(&b)));
        assert_eq!(p.covariance().nugget(), 0.01);
        let p = scenario_problem(Scenario::GridCentered, 16, 0).unwrap();
        assert_eq!(p.lower()[3], -1.0);
    }
}
