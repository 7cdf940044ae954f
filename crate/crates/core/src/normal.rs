//! Univariate standard normal primitives that stay accurate deep in the tails.
//!
//! Everything the sampler and the tilting solver need is expressed through
//! log-probabilities: `log_cdf`, `log_interval` (log of Φ(b) − Φ(a)) and a
//! quantile that accepts a log-probability, so that intervals whose mass is
//! far below `f64::MIN_POSITIVE` are still handled.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2};

/// ln(√(2π))
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Below this point `log_cdf` switches from `erfc` to the Mills-ratio continued fraction.
const LOG_CDF_CF_SWITCH: f64 = -30.0;

#[inline]
pub fn pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

#[inline]
pub fn log_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Φ(x).
#[inline]
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Mills ratio R(t) = (1 − Φ(t)) / φ(t) for large positive t, by backward
/// evaluation of the Laplace continued fraction.
fn mills_ratio_cf(t: f64) -> f64 {
    let mut f = t;
    for k in (1..=40).rev() {
        f = t + k as f64 / f;
    }
    1.0 / f
}

/// ln Φ(x), finite for every finite x.
pub fn log_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x == f64::INFINITY {
        return 0.0;
    }
    if x == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if x > 0.0 {
        (-0.5 * libm::erfc(x * FRAC_1_SQRT_2)).ln_1p()
    } else if x > LOG_CDF_CF_SWITCH {
        (0.5 * libm::erfc(-x * FRAC_1_SQRT_2)).ln()
    } else {
        log_pdf(x) + mills_ratio_cf(-x).ln()
    }
}

/// ln(1 − e^x) for x ≤ 0.
#[inline]
pub fn log1m_exp(x: f64) -> f64 {
    if x > -LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// ln(e^a + e^b).
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// ln(Φ(b) − Φ(a)) for a ≤ b, evaluated on whichever side keeps the
/// arguments small. Returns −∞ only when the interval is empty or its mass
/// underflows the log domain (which does not happen for finite inputs).
pub fn log_interval(a: f64, b: f64) -> f64 {
    if !(a < b) {
        return f64::NEG_INFINITY;
    }
    if a > 0.0 {
        return log_interval(-b, -a);
    }
    if b <= 0.0 {
        let lb = log_cdf(b);
        let la = log_cdf(a);
        if la == f64::NEG_INFINITY {
            return lb;
        }
        return lb + log1m_exp(la - lb);
    }
    // a ≤ 0 < b: erf is accurate around zero, so narrow intervals keep their digits.
    (0.5 * (libm::erf(b * FRAC_1_SQRT_2) - libm::erf(a * FRAC_1_SQRT_2))).ln()
}

// Wichura (1988), algorithm AS 241, PPND16.
const A: [f64; 8] = [
    3.387_132_872_796_366_608,
    1.331_416_678_917_843_774_5e2,
    1.971_590_950_306_551_442_7e3,
    1.373_169_376_550_946_112_5e4,
    4.592_195_393_154_987_145_7e4,
    6.726_577_092_700_870_085_3e4,
    3.343_057_558_358_812_810_5e4,
    2.509_080_928_730_122_672_7e3,
];
const B: [f64; 8] = [
    1.0,
    4.231_333_070_160_091_125_2e1,
    6.871_870_074_920_579_083e2,
    5.394_196_021_424_751_107_7e3,
    2.121_379_430_158_659_586_7e4,
    3.930_789_580_009_271_061e4,
    2.872_908_573_572_194_267_4e4,
    5.226_495_278_852_854_561e3,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_577_34,
    4.630_337_846_156_545_295_9,
    5.769_497_221_460_691_405_5,
    3.647_848_324_763_204_605_04,
    1.270_458_252_452_368_382_58,
    2.417_807_251_774_506_117_7e-1,
    2.272_384_498_926_918_458_33e-2,
    7.745_450_142_783_414_076_4e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_758_821_87,
    1.676_384_830_183_803_849_4,
    6.897_673_349_851_000_045_5e-1,
    1.481_039_764_274_800_745_9e-1,
    1.519_866_656_361_645_719_66e-2,
    5.475_938_084_995_344_946e-4,
    1.050_750_071_644_416_843_24e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103_777_2,
    5.463_784_911_164_114_369_9,
    1.784_826_539_917_291_335_8,
    2.965_605_718_285_048_912_3e-1,
    2.653_218_952_657_612_309_3e-2,
    1.242_660_947_388_078_438_6e-3,
    2.711_555_568_743_487_578_15e-5,
    2.010_334_399_292_288_132_65e-7,
];
const F: [f64; 8] = [
    1.0,
    5.998_322_065_558_879_376_9e-1,
    1.369_298_809_227_358_053_1e-1,
    1.487_536_129_085_061_485_25e-2,
    7.868_691_311_456_132_591e-4,
    1.846_318_317_510_054_681_8e-5,
    1.421_511_758_316_445_888_7e-7,
    2.044_263_103_389_939_785_64e-15,
];

#[inline]
fn poly(c: &[f64; 8], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
}

/// Φ⁻¹(p) for p in (0, 1). Returns ∓∞ at the endpoints.
pub fn quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p <= 0.5 {
        lower_quantile(p, || p.ln())
    } else {
        let q = 1.0 - p;
        -lower_quantile(q, || q.ln())
    }
}

/// Φ⁻¹(e^lp) for lp ≤ ln(1/2), accurate for arbitrarily small probabilities.
pub fn quantile_from_log(lp: f64) -> f64 {
    if lp == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if lp > -LN_2 {
        // upper half: fall back to the complement
        let q = -lp.exp_m1();
        return -lower_quantile(q, || q.ln());
    }
    lower_quantile(lp.exp(), || lp)
}

/// Shared lower-half kernel; `p` may underflow to zero when `lp` is very negative.
/// The log is only needed in the tails, so it is taken lazily.
#[inline]
fn lower_quantile(p: f64, lp: impl FnOnce() -> f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let lp = lp();
    let r = (-lp).sqrt();
    let x = if r <= 5.0 {
        let r = r - 1.6;
        -poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        -poly(&E, r) / poly(&F, r)
    };
    if r > 26.0 {
        // Beyond the fitted range of the rational approximation: polish with
        // Newton steps on ln Φ(x) = lp.
        let mut x = x;
        for _ in 0..4 {
            let lc = log_cdf(x);
            let slope = (log_pdf(x) - lc).exp();
            let step = (lc - lp) / slope;
            x -= step;
            if step.abs() <= 1e-15 * x.abs() {
                break;
            }
        }
        return x;
    }
    x
}

/// E[Z | a < Z < b] for Z standard normal.
pub fn truncated_mean(a: f64, b: f64) -> f64 {
    if a == b {
        return a;
    }
    let lp = log_interval(a, b);
    let ta = if a.is_finite() { (log_pdf(a) - lp).exp() } else { 0.0 };
    let tb = if b.is_finite() { (log_pdf(b) - lp).exp() } else { 0.0 };
    (ta - tb).clamp(a, b)
}

/// Draw from the standard normal truncated to (a, b) by inversion of the
/// uniform `w`: returns Φ⁻¹(Φ(a) + w·(Φ(b) − Φ(a))), computed on the side of
/// zero that avoids cancellation. `log_mass` must equal `log_interval(a, b)`.
pub fn truncated_inverse(a: f64, b: f64, log_mass: f64, w: f64) -> f64 {
    let y = if a >= 0.0 {
        // Upper tail: 1 − (Φ(a) + w p) = (1 − w) Φ(−a) + w Φ(−b)
        let lu = if b == f64::INFINITY {
            (-w).ln_1p() + log_mass
        } else {
            log_add_exp((-w).ln_1p() + log_cdf(-a), w.ln() + log_cdf(-b))
        };
        -quantile_from_log(lu)
    } else if b <= 0.0 {
        let lu = if a == f64::NEG_INFINITY {
            w.ln() + log_mass
        } else {
            log_add_exp((-w).ln_1p() + log_cdf(a), w.ln() + log_cdf(b))
        };
        quantile_from_log(lu)
    } else {
        let mass = log_mass.exp();
        let lower = if a == f64::NEG_INFINITY { w * mass } else { cdf(a) + w * mass };
        if lower <= 0.5 {
            quantile(lower)
        } else {
            let upper = cdf(-b) + (1.0 - w) * mass;
            -quantile(upper)
        }
    };
    y.clamp(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        if b == 0.0 {
            a.abs()
        } else {
            ((a - b) / b).abs()
        }
    }

    // Reference values computed with 150-digit mpmath.
    const LOG_CDF_REF: &[(f64, f64)] = &[
        (-1000.0, -500007.82669481218431),
        (-200.0, -20006.217280898190402),
        (-40.0, -804.60844201375378817),
        (-38.0, -726.5572160188201301),
        (-30.0, -454.32124395634319711),
        (-20.0, -203.91715537109726394),
        (-10.0, -53.231285150512470578),
        (-5.0, -15.064998393988725736),
        (-1.0, -1.8410216450092635058),
        (-0.1, -0.77615459273027332557),
        (0.0, -0.69314718055994530942),
        (0.5, -0.36894641528865639307),
        (1.0, -0.17275377902344988953),
        (3.0, -0.0013508099647481937988),
        (5.0, -2.8665161296376359338e-7),
        (8.0, -6.2209605742717860585e-16),
        (10.0, -7.619853024160526066e-24),
        (20.0, -2.7536241186062336951e-89),
    ];

    const QUANTILE_LOG_REF: &[(f64, f64)] = &[
        (-1e-10, 6.3613409024117348232),
        (-0.01, 2.3282217375371756864),
        (-0.1, 1.3096177994584931617),
        (-0.5, 0.27028802073873585392),
        (-1.0, -0.33747496376420245528),
        (-2.0, -1.1015196284987502661),
        (-3.0, -1.6469217205277147766),
        (-5.0, -2.4709386372615884169),
        (-10.0, -3.9139462405318930773),
        (-50.0, -9.6748252836123565088),
        (-100.0, -13.888476033003886317),
        (-500.0, -31.484299775628829918),
        (-700.0, -37.295079632647416957),
        (-745.0, -38.481948964330200141),
        (-800.0, -39.884694838256677568),
        (-2000.0, -63.165418608783609485),
        (-1e5, -447.19789367852505149),
    ];

    const QUANTILE_REF: &[(f64, f64)] = &[
        (1e-300, -37.047096299361199237),
        (1e-100, -21.273453560965324295),
        (1e-20, -9.2623400897984075737),
        (1e-10, -6.3613409024040562047),
        (1e-5, -4.2648907939228246285),
        (0.001, -3.0902323061678135415),
        (0.02, -2.0537489106318230529),
        (0.02425, -1.9729610513118848503),
        (0.05, -1.6448536269514727149),
        (0.1, -1.281551565544600467),
        (0.25, -0.6744897501960817432),
        (0.4, -0.2533471031357997988),
        (0.6, 0.2533471031357997988),
        (0.9, 1.281551565544600467),
        (0.975, 1.9599639845400542355),
    ];

    #[test]
    fn log_cdf_matches_reference() {
        for &(x, want) in LOG_CDF_REF {
            let got = log_cdf(x);
            assert!(rel(got, want) < 1e-13, "log_cdf({x}) = {got}, want {want}");
        }
        assert_eq!(log_cdf(f64::NEG_INFINITY), f64::NEG_INFINITY);
        assert_eq!(log_cdf(f64::INFINITY), 0.0);
    }

    #[test]
    fn quantile_relative_error_guard() {
        for &(p, want) in QUANTILE_REF {
            let got = quantile(p);
            assert!(rel(got, want) <= 1e-14, "quantile({p}) = {got}, want {want}");
        }
        for &(lp, want) in QUANTILE_LOG_REF {
            let got = quantile_from_log(lp);
            assert!(rel(got, want) <= 1e-14, "quantile_from_log({lp}) = {got}, want {want}");
        }
        assert_eq!(quantile(0.5), 0.0);
    }

    #[test]
    fn log_interval_matches_reference() {
        let inf = f64::INFINITY;
        let cases: &[(f64, f64, f64)] = &[
            (-1.0, 1.0, -0.38171514630212607227),
            (0.0, 1.0, -1.0748623268620713817),
            (5.0, 6.0, -15.068446096529453352),
            (10.0, 11.0, -53.23131022558312486),
            (-11.0, -10.0, -53.23131022558312486),
            (30.0, 31.0, -454.32124395634325204),
            (-1e-8, 1e-8, -18.6464720965970929),
            (2.0, inf, -3.7831843336820319488),
            (-inf, -40.0, -804.60844201375378817),
            (38.0, 40.0, -726.5572160188201301),
        ];
        for &(a, b, want) in cases {
            let got = log_interval(a, b);
            assert!(rel(got, want) < 1e-12, "log_interval({a},{b}) = {got}, want {want}");
        }
        assert_eq!(log_interval(-inf, inf), 0.0);
        assert_eq!(log_interval(1.0, 1.0), f64::NEG_INFINITY);
    }

    #[test]
    fn truncated_inverse_stays_inside_and_is_monotone() {
        for &(a, b) in &[(-1.0, 1.0), (3.0, f64::INFINITY), (40.0, 41.0), (f64::NEG_INFINITY, -45.0), (-0.5, 8.0)] {
            let lm = log_interval(a, b);
            let mut prev = f64::NEG_INFINITY;
            for k in 1..100 {
                let w = k as f64 / 100.0;
                let y = truncated_inverse(a, b, lm, w);
                assert!(y >= a && y <= b, "({a},{b}) w={w} -> {y}");
                assert!(y >= prev, "not monotone at ({a},{b}) w={w}");
                prev = y;
            }
        }
        // half-line median
        let y = truncated_inverse(f64::NEG_INFINITY, 0.0, log_interval(f64::NEG_INFINITY, 0.0), 0.5);
        assert!((y - quantile(0.25)).abs() < 1e-15);
    }

    #[test]
    fn truncated_mean_known_values() {
        // half-normal mean
        let m = truncated_mean(0.0, f64::INFINITY);
        assert!((m - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-15);
        assert_eq!(truncated_mean(-1.0, 1.0), 0.0);
        // far tail: mean approaches the lower limit from above
        let m = truncated_mean(50.0, f64::INFINITY);
        assert!(m > 50.0 && m < 50.03);
    }
}
