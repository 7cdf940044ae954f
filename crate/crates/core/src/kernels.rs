//! Covariance models and on-demand access to covariance entries.
//!
//! A [`CovarianceModel`] never materializes the full n × n matrix (except for
//! the [`KernelFamily::Dense`] family, where the user supplies it). Entries are
//! computed from locations whenever the Vecchia builder, the reordering
//! heuristics or the oracles ask for them.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius in kilometres, used by the chordal metric.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    #[serde(rename = "matern-0.5")]
    Matern05,
    #[serde(rename = "matern-1.5")]
    Matern15,
    #[serde(rename = "matern-2.5")]
    Matern25,
    ConstantCorrelation,
    Dense,
}

impl KernelFamily {
    pub fn is_coordinate_based(self) -> bool {
        matches!(self, KernelFamily::Matern05 | KernelFamily::Matern15 | KernelFamily::Matern25)
    }

    /// Matérn correlation at scaled distance `r` (distance divided by range).
    #[inline]
    fn matern(self, r: f64) -> f64 {
        match self {
            KernelFamily::Matern05 => (-r).exp(),
            KernelFamily::Matern15 => {
                let t = 3f64.sqrt() * r;
                (1.0 + t) * (-t).exp()
            }
            KernelFamily::Matern25 => {
                let t = 5f64.sqrt() * r;
                (1.0 + t + t * t / 3.0) * (-t).exp()
            }
            _ => unreachable!("not a Matérn family"),
        }
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "matern05" | "matern-0.5" | "exponential" => Ok(KernelFamily::Matern05),
            "matern15" | "matern-1.5" => Ok(KernelFamily::Matern15),
            "matern25" | "matern-2.5" => Ok(KernelFamily::Matern25),
            "const-corr" | "constant-correlation" => Ok(KernelFamily::ConstantCorrelation),
            "dense" | "dense-matrix" => Ok(KernelFamily::Dense),
            other => Err(Error::param(format!("unknown kernel family '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMetric {
    #[default]
    Euclidean,
    /// First two coordinates are longitude/latitude in degrees; their
    /// distance is the chord through a sphere of radius [`EARTH_RADIUS_KM`].
    Chordal,
}

/// n points in d dimensions, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Locations {
    dim: usize,
    coords: Vec<f64>,
}

impl Locations {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("locations need at least one coordinate"));
        }
        if coords.len() % dim != 0 {
            return Err(Error::param(format!(
                "{} coordinates do not split into rows of width {dim}",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::data("non-finite location coordinate"));
        }
        Ok(Locations { dim, coords })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::data(format!("row {i} has {} coordinates, expected {dim}", r.len())));
            }
            coords.extend_from_slice(r);
        }
        Locations::new(dim, coords)
    }

    /// `side × side` equispaced grid on [0, 1]², endpoints included, x fastest.
    pub fn unit_grid(side: usize) -> Self {
        let step = if side > 1 { 1.0 / (side - 1) as f64 } else { 0.0 };
        let mut coords = Vec::with_capacity(2 * side * side);
        for r in 0..side {
            for c in 0..side {
                coords.push(c as f64 * step);
                coords.push(r as f64 * step);
            }
        }
        Locations { dim: 2, coords }
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords
    }

    pub fn select(&self, idx: &[usize]) -> Locations {
        let mut coords = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            coords.extend_from_slice(self.row(i));
        }
        Locations { dim: self.dim, coords }
    }

    pub fn concat(&self, other: &Locations) -> Result<Locations> {
        if other.dim != self.dim {
            return Err(Error::param("cannot concatenate locations of different dimension"));
        }
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        Ok(Locations { dim: self.dim, coords })
    }
}

/// Kernel family, parameters and inputs; produces Σ_ij on demand.
#[derive(Clone, Debug)]
pub struct CovarianceModel {
    family: KernelFamily,
    variance: f64,
    ranges: Vec<f64>,
    range_groups: Vec<usize>,
    nugget: f64,
    metric: DistanceMetric,
    rho: f64,
    n: usize,
    locations: Option<Locations>,
    dense: Option<Arc<Vec<f64>>>,
    /// Embedded coordinates divided by their group's range.
    scaled: Vec<f64>,
    scaled_dim: usize,
}

impl CovarianceModel {
    /// Isotropic Matérn model with a single range over all coordinates.
    pub fn matern(
        family: KernelFamily,
        variance: f64,
        range: f64,
        nugget: f64,
        locations: Locations,
    ) -> Result<Self> {
        if !family.is_coordinate_based() {
            return Err(Error::param("matern() requires a Matérn family"));
        }
        let groups = vec![0; locations.dim()];
        let mut model = CovarianceModel {
            family,
            variance,
            ranges: vec![range],
            range_groups: groups,
            nugget,
            metric: DistanceMetric::Euclidean,
            rho: 0.0,
            n: locations.len(),
            locations: Some(locations),
            dense: None,
            scaled: Vec::new(),
            scaled_dim: 0,
        };
        model.validate()?;
        model.rescale()?;
        Ok(model)
    }

    /// Unit-variance exchangeable correlation matrix.
    pub fn constant_correlation(n: usize, rho: f64) -> Result<Self> {
        let model = CovarianceModel {
            family: KernelFamily::ConstantCorrelation,
            variance: 1.0,
            ranges: Vec::new(),
            range_groups: Vec::new(),
            nugget: 0.0,
            metric: DistanceMetric::Euclidean,
            rho,
            n,
            locations: None,
            dense: None,
            scaled: Vec::new(),
            scaled_dim: 0,
        };
        model.validate()?;
        Ok(model)
    }

    /// Arbitrary user-supplied covariance, row-major n × n.
    pub fn dense(n: usize, matrix: Vec<f64>) -> Result<Self> {
        if matrix.len() != n * n {
            return Err(Error::param(format!("dense matrix has {} entries, expected {}", matrix.len(), n * n)));
        }
        for i in 0..n {
            if !(matrix[i * n + i] > 0.0) {
                return Err(Error::param(format!("diagonal entry {i} is not positive")));
            }
            for j in 0..i {
                let (u, l) = (matrix[j * n + i], matrix[i * n + j]);
                if !u.is_finite() || (u - l).abs() > 1e-12 * (u.abs() + l.abs()).max(f64::MIN_POSITIVE) {
                    return Err(Error::param(format!("dense matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        let mut sym = matrix;
        for i in 0..n {
            for j in 0..i {
                sym[j * n + i] = sym[i * n + j];
            }
        }
        Ok(CovarianceModel {
            family: KernelFamily::Dense,
            variance: 1.0,
            ranges: Vec::new(),
            range_groups: Vec::new(),
            nugget: 0.0,
            metric: DistanceMetric::Euclidean,
            rho: 0.0,
            n,
            locations: None,
            dense: Some(Arc::new(sym)),
            scaled: Vec::new(),
            scaled_dim: 0,
        })
    }

    /// Separate ranges per coordinate group; `groups[k]` names the range used by coordinate k.
    pub fn with_anisotropy(mut self, groups: Vec<usize>, ranges: Vec<f64>) -> Result<Self> {
        let dim = self.require_locations()?.dim();
        if groups.len() != dim {
            return Err(Error::param(format!("{} range groups for {dim} coordinates", groups.len())));
        }
        if groups.iter().any(|&g| g >= ranges.len()) {
            return Err(Error::param("range group index exceeds number of ranges"));
        }
        self.range_groups = groups;
        self.ranges = ranges;
        self.validate()?;
        self.rescale()?;
        Ok(self)
    }

    pub fn with_metric(mut self, metric: DistanceMetric) -> Result<Self> {
        self.require_locations()?;
        self.metric = metric;
        self.rescale()?;
        Ok(self)
    }

    /// Same inputs, new (variance, ranges, nugget).
    pub fn with_params(&self, variance: f64, ranges: &[f64], nugget: f64) -> Result<Self> {
        if !self.family.is_coordinate_based() {
            return Err(Error::param("only Matérn models carry kernel parameters"));
        }
        if ranges.len() != self.ranges.len() {
            return Err(Error::param(format!("expected {} ranges, got {}", self.ranges.len(), ranges.len())));
        }
        let mut m = self.clone();
        m.variance = variance;
        m.ranges = ranges.to_vec();
        m.nugget = nugget;
        m.validate()?;
        m.rescale()?;
        Ok(m)
    }

    fn require_locations(&self) -> Result<&Locations> {
        self.locations
            .as_ref()
            .ok_or_else(|| Error::param("operation needs a coordinate-based kernel"))
    }

    fn validate(&self) -> Result<()> {
        match self.family {
            KernelFamily::ConstantCorrelation => {
                let lo = if self.n > 1 { -1.0 / (self.n as f64 - 1.0) } else { -1.0 };
                if !(self.rho > lo && self.rho < 1.0) {
                    return Err(Error::param(format!(
                        "constant correlation {} outside ({lo}, 1) for n = {}",
                        self.rho, self.n
                    )));
                }
            }
            KernelFamily::Dense => {}
            _ => {
                if !(self.variance > 0.0 && self.variance.is_finite()) {
                    return Err(Error::param(format!("variance must be positive, got {}", self.variance)));
                }
                if !(self.nugget >= 0.0 && self.nugget.is_finite()) {
                    return Err(Error::param(format!("nugget must be non-negative, got {}", self.nugget)));
                }
                if self.ranges.is_empty() || self.ranges.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
                    return Err(Error::param(format!("ranges must be positive, got {:?}", self.ranges)));
                }
            }
        }
        Ok(())
    }

    fn rescale(&mut self) -> Result<()> {
        let Some(locs) = self.locations.as_ref() else {
            return Ok(());
        };
        let d = locs.dim();
        let chordal = self.metric == DistanceMetric::Chordal;
        if chordal {
            if d < 2 {
                return Err(Error::param("chordal metric needs longitude and latitude columns"));
            }
            if self.range_groups[0] != self.range_groups[1] {
                return Err(Error::param("longitude and latitude must share a range group"));
            }
        }
        let sd = if chordal { d + 1 } else { d };
        let mut scaled = Vec::with_capacity(self.n * sd);
        for i in 0..self.n {
            let row = locs.row(i);
            if chordal {
                let beta = self.ranges[self.range_groups[0]];
                let (lon, lat) = (row[0].to_radians(), row[1].to_radians());
                let r = EARTH_RADIUS_KM / beta;
                scaled.push(r * lat.cos() * lon.cos());
                scaled.push(r * lat.cos() * lon.sin());
                scaled.push(r * lat.sin());
                for k in 2..d {
                    scaled.push(row[k] / self.ranges[self.range_groups[k]]);
                }
            } else {
                for k in 0..d {
                    scaled.push(row[k] / self.ranges[self.range_groups[k]]);
                }
            }
        }
        self.scaled = scaled;
        self.scaled_dim = sd;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn ranges(&self) -> &[f64] {
        &self.ranges
    }

    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn metric(&self) -> DistanceMetric {
        self.metric
    }

    pub fn locations(&self) -> Option<&Locations> {
        self.locations.as_ref()
    }

    #[inline]
    fn scaled_distance(&self, i: usize, j: usize) -> f64 {
        let sd = self.scaled_dim;
        let (a, b) = (&self.scaled[i * sd..(i + 1) * sd], &self.scaled[j * sd..(j + 1) * sd]);
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    }

    /// Σ_ij including the nugget on the diagonal. Panics on out-of-range indices.
    #[inline]
    pub fn cov(&self, i: usize, j: usize) -> f64 {
        match self.family {
            KernelFamily::ConstantCorrelation => {
                assert!(i < self.n && j < self.n, "index out of range");
                if i == j {
                    1.0
                } else {
                    self.rho
                }
            }
            KernelFamily::Dense => self.dense.as_ref().expect("dense family carries a matrix")[i * self.n + j],
            fam => {
                if i == j {
                    self.variance + self.nugget
                } else {
                    self.variance * fam.matern(self.scaled_distance(i, j))
                }
            }
        }
    }

    fn check(&self, i: usize) -> Result<()> {
        if i >= self.n {
            Err(Error::Index { index: i, n: self.n })
        } else {
            Ok(())
        }
    }

    pub fn kernel_value(&self, i: usize, j: usize) -> Result<f64> {
        self.check(i)?;
        self.check(j)?;
        Ok(self.cov(i, j))
    }

    #[inline]
    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 1.0;
        }
        self.cov(i, j) / (self.cov(i, i) * self.cov(j, j)).sqrt()
    }

    /// (1 − |ρ_ij|)^{1/2}
    pub fn correlation_distance(&self, i: usize, j: usize) -> Result<f64> {
        self.check(i)?;
        self.check(j)?;
        Ok(self.corr_dist(i, j))
    }

    #[inline]
    fn corr_dist(&self, i: usize, j: usize) -> f64 {
        (1.0 - self.correlation(i, j).abs()).max(0.0).sqrt()
    }

    /// Distance used to pick Vecchia neighbors. For Matérn models this is the
    /// metric distance, expressed in units of the first range group when the
    /// model is anisotropic; otherwise it is the correlation distance.
    pub fn neighbor_distance(&self, i: usize, j: usize) -> Result<f64> {
        self.check(i)?;
        self.check(j)?;
        Ok(self.neighbor_dist(i, j))
    }

    #[inline]
    pub(crate) fn neighbor_dist(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        if self.family.is_coordinate_based() {
            match (&self.locations, self.metric) {
                // raw coordinates, so the neighbor sets cannot depend on the range
                (Some(locs), DistanceMetric::Euclidean) if self.ranges.len() == 1 => {
                    locs.row(i).iter().zip(locs.row(j)).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
                }
                _ => self.scaled_distance(i, j) * self.ranges[0],
            }
        } else {
            self.corr_dist(i, j)
        }
    }

    /// Model restricted to (and reordered by) `idx`.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        for &i in idx {
            self.check(i)?;
        }
        let mut m = self.clone();
        m.n = idx.len();
        match self.family {
            KernelFamily::ConstantCorrelation => {
                m.validate()?;
            }
            KernelFamily::Dense => {
                let k = idx.len();
                let mut sub = vec![0.0; k * k];
                for (r, &i) in idx.iter().enumerate() {
                    for (c, &j) in idx.iter().enumerate() {
                        sub[r * k + c] = self.cov(i, j);
                    }
                }
                m.dense = Some(Arc::new(sub));
            }
            _ => {
                m.locations = Some(self.require_locations()?.select(idx));
                let sd = self.scaled_dim;
                let mut scaled = Vec::with_capacity(idx.len() * sd);
                for &i in idx {
                    scaled.extend_from_slice(&self.scaled[i * sd..(i + 1) * sd]);
                }
                m.scaled = scaled;
            }
        }
        Ok(m)
    }

    /// Model over the current locations followed by `extra` (for prediction).
    pub fn extended_with(&self, extra: &Locations) -> Result<Self> {
        let locs = self.require_locations()?.concat(extra)?;
        let mut m = self.clone();
        m.n = locs.len();
        m.locations = Some(locs);
        m.rescale()?;
        Ok(m)
    }

    /// Σ[idx, idx] as a row-major k × k matrix.
    pub fn block(&self, idx: &[usize]) -> Vec<f64> {
        let k = idx.len();
        let mut out = vec![0.0; k * k];
        for r in 0..k {
            for c in 0..=r {
                let v = self.cov(idx[r], idx[c]);
                out[r * k + c] = v;
                out[c * k + r] = v;
            }
        }
        out
    }

    /// The full Σ, row-major. Intended for oracles and small problems.
    pub fn dense_matrix(&self) -> Vec<f64> {
        let idx: Vec<usize> = (0..self.n).collect();
        self.block(&idx)
    }
}
