//! Standard normal special functions.
//!
//! `std_normal_cdf` goes through the complementary error function
//! (`Φ(x) = erfc(-x/√2)/2`), which keeps full relative precision in the lower
//! tail. `std_normal_quantile` starts from Acklam's rational approximation
//! (relative error ~1.2e-9) and polishes it with a Halley step against the cdf.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 1/√(2π)
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Quantile inputs closer than this to 0 or 1 are rejected instead of saturated.
pub const QUANTILE_EDGE: f64 = 1e-15;

/// A value in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub const HALF: Probability = Probability(0.5);
    pub const ONE: Probability = Probability(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Probability(value))
        } else {
            Err(Error::Domain(format!("probability {value} outside [0, 1]")))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Probability {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Probability::new(value)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

impl fmt::Display for Probability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

fn require_finite(x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("non-finite input {x}")))
    }
}

/// Standard normal density φ(x).
pub fn std_normal_pdf(x: f64) -> Result<f64> {
    require_finite(x)?;
    Ok(pdf(x))
}

/// Standard normal distribution function Φ(x).
pub fn std_normal_cdf(x: f64) -> Result<Probability> {
    require_finite(x)?;
    Ok(Probability(cdf(x)))
}

/// Inverse of Φ on the open unit interval.
pub fn std_normal_quantile(p: Probability) -> Result<f64> {
    let p = p.value();
    if p <= QUANTILE_EDGE || p >= 1.0 - QUANTILE_EDGE {
        return Err(Error::Domain(format!(
            "quantile argument {p} not inside (0, 1) by at least {QUANTILE_EDGE:e}"
        )));
    }
    Ok(quantile(p))
}

#[inline]
pub(crate) fn pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

#[inline]
pub(crate) fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

// Acklam's coefficients.
const A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_690e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];
const P_LOW: f64 = 0.02425;

fn acklam(p: f64) -> f64 {
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -acklam(1.0 - p)
    }
}

/// Quantile for the lower half `p <= 0.5`; the upper half goes through symmetry so
/// the Halley correction always works on the small tail probability.
fn lower_quantile(p: f64) -> f64 {
    let mut x = acklam(p);
    for _ in 0..2 {
        let e = cdf(x) - p;
        let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}

pub(crate) fn quantile(p: f64) -> f64 {
    if p == 0.5 {
        0.0
    } else if p < 0.5 {
        lower_quantile(p)
    } else {
        -lower_quantile(1.0 - p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Φ(x) = 1/2 + φ(x)·Σ x^(2n+1)/(2n+1)!!, a series with positive terms.
    fn series_cdf(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        let mut n = 0.0;
        while term.abs() > 1e-18 * sum.abs() {
            n += 1.0;
            term *= x * x / (2.0 * n + 1.0);
            sum += term;
        }
        0.5 + (-(x * x) / 2.0).exp() / (2.0 * PI).sqrt() * sum
    }

    fn bisect_quantile(p: f64) -> f64 {
        let (mut lo, mut hi) = (-40.0, 40.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if series_cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn pdf_values() {
        assert_eq!(std_normal_pdf(0.0).unwrap(), INV_SQRT_2PI);
        assert!((std_normal_pdf(1.0).unwrap() - 0.241_970_724_519_143_35).abs() < 1e-16);
        assert_eq!(std_normal_pdf(-1.0).unwrap(), std_normal_pdf(1.0).unwrap());
        assert!(std_normal_pdf(f64::NAN).is_err());
        assert!(std_normal_pdf(f64::INFINITY).is_err());
    }

    #[test]
    fn cdf_anchor_values() {
        assert_eq!(std_normal_cdf(0.0).unwrap().value(), 0.5);
        // 50-digit reference values
        let cases = [
            (0.1, 0.539_827_837_277_028_98),
            (5.0, 0.999_999_713_348_428_1),
            (1.0, 0.841_344_746_068_542_9),
            (-3.0, 0.001_349_898_031_630_094_5),
            (2.5, 0.993_790_334_674_223_9),
        ];
        for (x, want) in cases {
            let got = std_normal_cdf(x).unwrap().value();
            assert!((got - want).abs() < 1e-15, "Φ({x}) = {got}, want {want}");
        }
        let deep = std_normal_cdf(-8.0).unwrap().value();
        assert!((deep / 6.220_960_574_271_784e-16 - 1.0).abs() < 1e-13);
    }

    #[test]
    fn cdf_matches_series_oracle() {
        for i in -600..=600 {
            let x = i as f64 / 100.0;
            let got = cdf(x);
            let want = series_cdf(x);
            assert!((got - want).abs() <= 1e-12, "x={x}: {got} vs {want}");
        }
    }

    #[test]
    fn cdf_symmetry_and_monotonicity() {
        let mut prev = 0.0;
        for i in -4000..=4000 {
            let x = i as f64 / 500.0;
            let c = cdf(x);
            assert!((c + cdf(-x) - 1.0).abs() <= 1e-14);
            // Φ rounds to 1.0 past x ≈ 7.7
            if x < 7.0 {
                assert!(c > prev, "not strictly increasing at {x}");
            } else {
                assert!(c >= prev);
            }
            prev = c;
        }
    }

    #[test]
    fn quantile_anchor_values() {
        assert_eq!(std_normal_quantile(Probability::HALF).unwrap(), 0.0);
        let q = |p: f64| std_normal_quantile(Probability::new(p).unwrap()).unwrap();
        assert!((q(0.975) - 1.959_963_984_540_054).abs() < 1e-13);
        assert!((q(0.025) + 1.959_963_984_540_054).abs() < 1e-13);
        assert!((q(0.999) - 3.090_232_306_167_813_5).abs() < 1e-13);
        assert!((q(1e-10) + 6.361_340_902_404_056).abs() < 1e-11);
        let one = q(cdf(1.0));
        assert!((one - 1.0).abs() < 1e-12);
        assert!((q(0.975) - bisect_quantile(0.975)).abs() < 1e-12);
    }

    #[test]
    fn quantile_rejects_edges() {
        for p in [0.0, 1.0, 1e-16, 1.0 - 1e-16] {
            let err = std_normal_quantile(Probability::new(p).unwrap()).unwrap_err();
            assert!(matches!(err, Error::Domain(_)), "{p}");
        }
    }

    #[test]
    fn probability_bounds() {
        assert!(Probability::new(-0.1).is_err());
        assert!(Probability::new(1.1).is_err());
        assert!(Probability::new(f64::NAN).is_err());
        assert!(serde_json::from_str::<Probability>("1.5").is_err());
        assert_eq!(serde_json::from_str::<Probability>("0.25").unwrap().value(), 0.25);
    }

    proptest::proptest! {
        #[test]
        fn quantile_round_trip(p in 1e-6f64..(1.0 - 1e-6)) {
            let x = std_normal_quantile(Probability::new(p).unwrap()).unwrap();
            proptest::prop_assert!((cdf(x) - p).abs() <= 1e-9 * p.min(1.0 - p).max(1e-6));
        }
    }
}
