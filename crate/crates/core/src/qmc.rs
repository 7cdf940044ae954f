//! Randomized Sobol points (Joe–Kuo direction numbers, random digital shift).

use std::sync::OnceLock;

use rand::RngCore;
use sobol::params::JoeKuoD6;
use sobol::Sobol;

use crate::rng::{self, Stream};

/// Largest dimension covered by the bundled direction numbers; above this the
/// generator falls back to pseudo-random points.
pub const MAX_SOBOL_DIM: usize = 21_201;

/// Clamp applied to every coordinate so that w is strictly interior.
pub const W_EPS: f64 = 1e-12;

const BITS: usize = 32;

fn params() -> &'static JoeKuoD6 {
    static P: OnceLock<JoeKuoD6> = OnceLock::new();
    P.get_or_init(JoeKuoD6::extended)
}

/// One digitally shifted Sobol point set in `dim` dimensions.
#[derive(Clone, Debug)]
pub struct ShiftedSobol {
    dirs: Vec<Vec<u32>>,
    shift: Vec<u32>,
}

impl ShiftedSobol {
    /// `None` when `dim` exceeds [`MAX_SOBOL_DIM`].
    pub fn new(dim: usize, seed: u64, shift_index: u64) -> Option<Self> {
        if dim > MAX_SOBOL_DIM {
            return None;
        }
        let dirs = if dim == 0 { Vec::new() } else { Sobol::<f32>::init_direction_vals::<u32>(dim, BITS, params()) };
        let mut r = rng::stream_rng(seed, Stream::QmcShift, shift_index);
        let shift = (0..dim).map(|_| r.next_u32()).collect();
        Some(ShiftedSobol { dirs, shift })
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    /// Integer state of point k (Gray-code order), before shifting.
    fn state(&self, k: u32) -> Vec<u32> {
        let g = k ^ (k >> 1);
        self.dirs
            .iter()
            .map(|d| (0..BITS).filter(|&b| g >> b & 1 == 1).fold(0u32, |acc, b| acc ^ d[b]))
            .collect()
    }

    /// Calls `f` on points `start .. start + count` in order.
    pub fn for_each_point(&self, start: u32, count: u32, mut f: impl FnMut(&[f64])) {
        let mut state = self.state(start);
        let mut point = vec![0.0; self.dim()];
        for k in start..start.saturating_add(count) {
            if k > start {
                // Gray code: consecutive points differ in the direction of the lowest zero bit of k − 1
                let c = (!(k - 1)).trailing_zeros() as usize;
                for (s, d) in state.iter_mut().zip(&self.dirs) {
                    *s ^= d[c];
                }
            }
            for ((p, &s), &sh) in point.iter_mut().zip(&state).zip(&self.shift) {
                *p = to_unit(s ^ sh);
            }
            f(&point);
        }
    }
}

#[inline]
fn to_unit(v: u32) -> f64 {
    ((v as f64 + 0.5) / 4_294_967_296.0).clamp(W_EPS, 1.0 - W_EPS)
}

/// `count` randomized low-discrepancy points in (0,1)^dim; pseudo-random above
/// the dimension cap. Deterministic in `seed`.
pub fn qmc_points(count: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    match ShiftedSobol::new(dim, seed, 0) {
        Some(s) => s.for_each_point(0, count as u32, |p| out.push(p.to_vec())),
        None => {
            let mut r = rng::stream_rng(seed, Stream::W, 0);
            for _ in 0..count {
                out.push((0..dim).map(|_| rng::open01(&mut r).clamp(W_EPS, 1.0 - W_EPS)).collect());
            }
        }
    }
    out
}

/// L2-star discrepancy by Warnock's formula, O(N² d).
pub fn l2_star_discrepancy(points: &[Vec<f64>]) -> f64 {
    let n = points.len() as f64;
    let d = points.first().map_or(0, Vec::len) as i32;
    let term1 = 3f64.powi(-d);
    let term2: f64 = points.iter().map(|p| p.iter().map(|x| (1.0 - x * x) / 2.0).product::<f64>()).sum();
    let mut term3 = 0.0;
    for p in points {
        for q in points {
            term3 += p.iter().zip(q).map(|(x, y)| 1.0 - x.max(*y)).product::<f64>();
        }
    }
    (term1 - 2.0 / n * term2 + term3 / (n * n)).sqrt()
}
