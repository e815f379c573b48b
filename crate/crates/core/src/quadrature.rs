//! Deterministic adaptive quadrature for the nested radial/angular integrals.
//!
//! Panels use the 31-point Gauss–Kronrod rule with the embedded 15-point
//! Gauss rule for the error estimate. Refinement is global: the panel with
//! the largest error estimate is bisected until the total estimate meets the
//! tolerance. Node sets are fixed and panel sums are accumulated in interval
//! order, so results are bit-reproducible.

use std::cell::Cell;

use thiserror::Error;

use crate::model::QuadratureSpec;

/// A finite integration interval with `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self, QuadError> {
        if lo.is_finite() && hi.is_finite() && lo < hi {
            Ok(Self { lo, hi })
        } else {
            Err(QuadError::InvalidInterval { lo, hi })
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QuadResult {
    pub value: f64,
    pub est_error: f64,
    pub evaluations: u64,
}

impl QuadResult {
    fn combine(self, other: QuadResult) -> QuadResult {
        QuadResult {
            value: self.value + other.value,
            est_error: self.est_error + other.est_error,
            evaluations: self.evaluations + other.evaluations,
        }
    }

    fn scaled(self, factor: f64) -> QuadResult {
        QuadResult {
            value: self.value * factor,
            est_error: self.est_error * factor.abs(),
            evaluations: self.evaluations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("quadrature did not converge: value {} with estimated error {}", partial.value, partial.est_error)]
    NonConvergence { partial: QuadResult },
    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
}

impl QuadError {
    /// Best available value, if any.
    pub fn partial(&self) -> Option<QuadResult> {
        match self {
            QuadError::NonConvergence { partial } => Some(*partial),
            QuadError::InvalidInterval { .. } => None,
        }
    }
}

/// Complementary error function.
///
/// Backed by the `libm` port of the FreeBSD/musl implementation (rational
/// approximations, < 1 ulp on the core range). Values below the smallest
/// normal double flush towards zero.
pub fn erfc(z: f64) -> f64 {
    libm::erfc(z)
}

// 31-point Kronrod abscissae on [-1, 1] (non-negative half, descending), with
// the 15-point Gauss weights on every odd abscissa.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 16] = [
    0.998_002_298_693_397_060_285_172_840_152_271,
    0.987_992_518_020_485_428_489_565_718_586_613,
    0.967_739_075_679_139_134_257_347_978_784_337,
    0.937_273_392_400_705_904_307_758_947_710_209,
    0.897_264_532_344_081_900_882_509_656_454_496,
    0.848_206_583_410_427_216_200_648_320_774_217,
    0.790_418_501_442_465_932_967_649_294_817_947,
    0.724_417_731_360_170_047_416_186_054_613_938,
    0.650_996_741_297_416_970_533_735_895_313_275,
    0.570_972_172_608_538_847_537_226_737_253_911,
    0.485_081_863_640_239_680_693_655_740_232_351,
    0.394_151_347_077_563_369_897_207_370_981_045,
    0.299_180_007_153_168_812_166_780_024_266_389,
    0.201_194_093_997_434_522_300_628_303_394_596,
    0.101_142_066_918_717_499_027_074_231_447_392,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 8] = [
    0.030_753_241_996_117_268_354_628_393_577_204,
    0.070_366_047_488_108_124_709_267_416_450_667,
    0.107_159_220_467_171_935_011_869_546_685_869,
    0.139_570_677_926_154_314_447_804_794_511_028,
    0.166_269_205_816_993_933_553_200_860_481_209,
    0.186_161_000_015_562_211_026_800_561_866_423,
    0.198_431_485_327_111_576_456_118_326_443_839,
    0.202_578_241_925_561_272_880_620_199_967_519,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 16] = [
    0.005_377_479_872_923_348_987_792_051_430_128,
    0.015_007_947_329_316_122_538_374_763_075_807,
    0.025_460_847_326_715_320_186_874_001_019_653,
    0.035_346_360_791_375_846_222_037_948_478_360,
    0.044_589_751_324_764_876_608_227_299_373_280,
    0.053_481_524_690_928_087_265_343_147_239_430,
    0.062_009_567_800_670_640_285_139_230_960_803,
    0.069_854_121_318_728_258_709_520_077_099_147,
    0.076_849_680_757_720_378_894_432_777_482_659,
    0.083_080_502_823_133_021_038_289_247_286_104,
    0.088_564_443_056_211_770_647_275_443_693_774,
    0.093_126_598_170_825_321_225_486_872_747_346,
    0.096_642_726_983_623_678_505_179_907_627_589,
    0.099_173_598_721_791_959_332_393_173_484_603,
    0.100_769_845_523_875_595_044_946_662_617_570,
    0.101_330_007_014_791_549_017_374_792_767_493,
];

/// Number of integrand evaluations per panel.
pub const PANEL_NODES: u64 = 31;

#[derive(Debug, Clone, Copy)]
struct Panel {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
    depth: u32,
}

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, depth: u32) -> Panel {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(center);
    let mut kronrod = fc * WGK[15];
    let mut gauss = fc * WG[7];
    let mut abs_sum = fc.abs() * WGK[15];
    for j in 0..15 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        kronrod += WGK[j] * (f1 + f2);
        abs_sum += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let value = kronrod * half;
    // Gauss–Kronrod difference plus a rounding floor proportional to ∫|f|.
    let error = ((kronrod - gauss) * half).abs() + 50.0 * f64::EPSILON * abs_sum * half.abs();
    Panel { lo, hi, value, error, depth }
}

fn target(spec: &QuadratureSpec, value: f64) -> f64 {
    spec.abs_tol.max(spec.rel_tol * value.abs())
}

/// Global adaptive integration over `[lo, hi]`, with optional interior
/// breakpoints where the integrand has kinks or jumps.
pub fn integrate_1d_with_breaks<F>(
    f: F,
    iv: Interval,
    breaks: &[f64],
    spec: &QuadratureSpec,
) -> Result<QuadResult, QuadError>
where
    F: Fn(f64) -> f64,
{
    let mut cuts: Vec<f64> = Vec::with_capacity(breaks.len() + 2);
    cuts.push(iv.lo);
    let mut interior: Vec<f64> = breaks.iter().copied().filter(|b| b.is_finite() && *b > iv.lo && *b < iv.hi).collect();
    interior.sort_by(|a, b| a.total_cmp(b));
    interior.dedup();
    cuts.extend(interior);
    cuts.push(iv.hi);

    let mut panels: Vec<Panel> = cuts.windows(2).map(|w| gauss_kronrod(&f, w[0], w[1], 0)).collect();
    let mut evaluations = PANEL_NODES * panels.len() as u64;

    loop {
        let total: f64 = panels.iter().map(|p| p.value).sum();
        let err: f64 = panels.iter().map(|p| p.error).sum();
        if err <= target(spec, total) {
            break;
        }
        // Worst panel that can still be split.
        let worst = panels
            .iter()
            .enumerate()
            .filter(|(_, p)| p.depth < spec.max_depth && p.hi - p.lo > 4.0 * f64::EPSILON * p.lo.abs().max(p.hi.abs()))
            .max_by(|(_, a), (_, b)| a.error.total_cmp(&b.error))
            .map(|(i, _)| i);
        let Some(i) = worst else {
            return Err(QuadError::NonConvergence { partial: finish(panels, evaluations) });
        };
        let p = panels[i];
        let mid = 0.5 * (p.lo + p.hi);
        panels[i] = gauss_kronrod(&f, p.lo, mid, p.depth + 1);
        panels.insert(i + 1, gauss_kronrod(&f, mid, p.hi, p.depth + 1));
        evaluations += 2 * PANEL_NODES;
    }
    Ok(finish(panels, evaluations))
}

fn finish(panels: Vec<Panel>, evaluations: u64) -> QuadResult {
    // Panels are kept in interval order, so this sum is reproducible.
    let value = panels.iter().map(|p| p.value).sum();
    let est_error = panels.iter().map(|p| p.error).sum();
    QuadResult { value, est_error, evaluations }
}

/// Adaptive integral of `f` over a finite interval.
pub fn integrate_1d<F>(f: F, iv: Interval, spec: &QuadratureSpec) -> Result<QuadResult, QuadError>
where
    F: Fn(f64) -> f64,
{
    integrate_1d_with_breaks(f, iv, &[], spec)
}

/// Integral of a non-negative, eventually decaying `f` over `[0, ∞)`.
///
/// Integrates `[0, X]` with `X = outer_tail_constant * decay_scale`, then
/// keeps appending `[X, 2X]` panels until the newest one adds no more than
/// `rel_tol` of the running total (or `abs_tol`).
pub fn integrate_semi_infinite_radial<F>(f: F, decay_scale: f64, spec: &QuadratureSpec) -> Result<QuadResult, QuadError>
where
    F: Fn(f64) -> f64,
{
    integrate_semi_infinite_with_breaks(f, decay_scale, &[], spec)
}

/// [`integrate_semi_infinite_radial`] with interior breakpoints.
pub fn integrate_semi_infinite_with_breaks<F>(
    f: F,
    decay_scale: f64,
    breaks: &[f64],
    spec: &QuadratureSpec,
) -> Result<QuadResult, QuadError>
where
    F: Fn(f64) -> f64,
{
    if !(decay_scale.is_finite() && decay_scale > 0.0) {
        return Err(QuadError::InvalidInterval { lo: 0.0, hi: decay_scale });
    }
    let mut x = spec.outer_tail_constant * decay_scale;
    let mut acc = integrate_1d_with_breaks(&f, Interval::new(0.0, x)?, breaks, spec)?;
    for _ in 0..spec.max_depth {
        let panel = integrate_1d_with_breaks(&f, Interval::new(x, 2.0 * x)?, breaks, spec).map_err(|e| match e {
            QuadError::NonConvergence { partial } => QuadError::NonConvergence { partial: acc.combine(partial) },
            other => other,
        })?;
        acc = acc.combine(panel);
        if panel.value.abs() <= spec.abs_tol.max(spec.rel_tol * acc.value.abs()) {
            return Ok(acc);
        }
        x *= 2.0;
    }
    Err(QuadError::NonConvergence { partial: acc })
}

/// Nested integral `∫_y ∫_u f(y, u) du dy`, inner over `u`.
pub fn integrate_2d_tensor<F>(
    f: F,
    y_iv: Interval,
    u_iv: Interval,
    spec: &QuadratureSpec,
) -> Result<QuadResult, QuadError>
where
    F: Fn(f64, f64) -> f64,
{
    integrate_2d_with_breaks(f, y_iv, &[], u_iv, |_| None, spec)
}

/// Nested 2-D integral with fixed outer breakpoints and an optional inner
/// breakpoint that may depend on the outer coordinate.
pub fn integrate_2d_with_breaks<F, B>(
    f: F,
    y_iv: Interval,
    y_breaks: &[f64],
    u_iv: Interval,
    u_break: B,
    spec: &QuadratureSpec,
) -> Result<QuadResult, QuadError>
where
    F: Fn(f64, f64) -> f64,
    B: Fn(f64) -> Option<f64>,
{
    let failure: Cell<Option<QuadError>> = Cell::new(None);
    let inner_evals = Cell::new(0u64);
    let inner_err = Cell::new(0.0f64);
    let outer = integrate_1d_with_breaks(
        |y| {
            let brk: Option<f64> = u_break(y);
            let brks: &[f64] = match &brk {
                Some(b) => std::slice::from_ref(b),
                None => &[],
            };
            let res = integrate_1d_with_breaks(|u| f(y, u), u_iv, brks, spec);
            let r = match res {
                Ok(r) => r,
                Err(e) => {
                    let r = e.partial().unwrap_or_default();
                    if let Some(prev) = failure.take() {
                        failure.set(Some(prev));
                    } else {
                        failure.set(Some(e));
                    }
                    r
                }
            };
            inner_evals.set(inner_evals.get() + r.evaluations);
            inner_err.set(inner_err.get().max(r.est_error));
            r.value
        },
        y_iv,
        y_breaks,
        spec,
    );
    let fold = |r: QuadResult| QuadResult {
        value: r.value,
        // Inner errors enter the outer integral weighted by the y-width.
        est_error: r.est_error + inner_err.get() * y_iv.width(),
        evaluations: inner_evals.get(),
    };
    match outer {
        Ok(r) => match failure.take() {
            None => Ok(fold(r)),
            Some(_) => Err(QuadError::NonConvergence { partial: fold(r) }),
        },
        Err(QuadError::NonConvergence { partial }) => Err(QuadError::NonConvergence { partial: fold(partial) }),
        Err(e) => Err(e),
    }
}

/// Scales a result by a constant factor (value and error).
pub(crate) fn scale(r: QuadResult, factor: f64) -> QuadResult {
    r.scaled(factor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    // Independent erfc reference: the non-alternating series
    // erf(z) = 2/√π·e^{−z²}·Σ 2ⁿz^{2n+1}/(2n+1)!! below z = 2, and a Lentz
    // continued fraction above.
    fn erfc_reference(z: f64) -> f64 {
        if z < 0.0 {
            return 2.0 - erfc_reference(-z);
        }
        let sqrt_pi = std::f64::consts::PI.sqrt();
        if z < 2.0 {
            let z2 = z * z;
            let mut term = z;
            let mut sum = z;
            for n in 1..500 {
                term *= 2.0 * z2 / (2 * n + 1) as f64;
                sum += term;
                if term < 1e-18 * sum {
                    break;
                }
            }
            1.0 - 2.0 / sqrt_pi * (-z2).exp() * sum
        } else {
            // erfc(z) = e^{−z²}/√π · 1/(z + (1/2)/(z + 1/(z + (3/2)/(z + ...))))
            let tiny = 1e-300;
            let mut f = z;
            let mut c = z;
            let mut d = 0.0;
            for n in 1..2000 {
                let an = n as f64 / 2.0;
                d = z + an * d;
                d = if d.abs() < tiny { tiny } else { d };
                c = z + an / c;
                c = if c.abs() < tiny { tiny } else { c };
                d = 1.0 / d;
                let delta = c * d;
                f *= delta;
                if (delta - 1.0).abs() < 1e-16 {
                    break;
                }
            }
            (-z * z).exp() / sqrt_pi / f
        }
    }

    #[test]
    fn erfc_reference_values() {
        assert_eq!(erfc(0.0), 1.0);
        assert!((erfc(-8.0) - 2.0).abs() < 1e-12);
        // Frozen from the series oracle.
        let oracle = erfc_reference(0.15653);
        assert!((oracle - 0.824_806_802_858_874).abs() < 1e-13, "oracle {oracle}");
        assert!((erfc(0.15653) - oracle).abs() <= 1e-12 * oracle);
    }

    #[test]
    fn erfc_matches_oracle_on_core_range() {
        let mut z = -6.0;
        while z <= 6.0 {
            let r = erfc_reference(z);
            assert!((erfc(z) - r).abs() <= 1e-12 * r.max(1e-300), "z={z}: {} vs {r}", erfc(z));
            z += 0.01;
        }
        assert!(erfc(40.0) < 1e-300);
    }

    #[test]
    fn polynomial_and_constant() {
        let r = integrate_1d(|x| x * x, iv(0.0, 1.0), &spec()).unwrap();
        assert!((r.value - 1.0 / 3.0).abs() < 1e-15);
        let r = integrate_1d(|_| 1.0, iv(0.0, 1.0), &spec()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-15);
        assert_eq!(r.evaluations, PANEL_NODES);
    }

    #[test]
    fn truncated_gaussian_half_line() {
        // √π/2 = 0.886226925452758...
        let r = integrate_1d(|x| (-x * x).exp(), iv(0.0, 10.0), &spec()).unwrap();
        assert!((r.value - 0.886_226_925_452_758).abs() < 1e-9);
    }

    #[test]
    fn breakpoints_handle_jumps() {
        let r = integrate_1d_with_breaks(|x| if x < 0.3 { 1.0 } else { 0.0 }, iv(0.0, 1.0), &[0.3], &spec()).unwrap();
        assert!((r.value - 0.3).abs() < 1e-14);
    }

    #[test]
    fn semi_infinite_examples() {
        let r = integrate_semi_infinite_radial(|x| (-x).exp(), 1.0, &spec()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-7);
        let r = integrate_semi_infinite_radial(|x| x * x * (-x * x / 2.0).exp(), 1.0, &spec()).unwrap();
        let oracle = (std::f64::consts::PI / 2.0).sqrt();
        assert!((r.value - oracle).abs() < 1e-7 * oracle);
        let r = integrate_semi_infinite_radial(|_| 0.0, 1.0, &spec()).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn semi_infinite_non_decaying_fails() {
        let spec = QuadratureSpec { max_depth: 5, ..spec() };
        let err = integrate_semi_infinite_radial(|_| 1.0, 1.0, &spec).unwrap_err();
        assert!(matches!(err, QuadError::NonConvergence { .. }));
        assert!(err.partial().unwrap().value > 0.0);
    }

    #[test]
    fn depth_exhaustion_reports_partial() {
        let spec = QuadratureSpec { max_depth: 2, rel_tol: 1e-14, abs_tol: 1e-16, ..spec() };
        let err = integrate_1d(|x| x.abs().sqrt().recip(), iv(0.0, 1.0), &spec).unwrap_err();
        let partial = err.partial().unwrap();
        assert!(partial.value > 1.0 && partial.value < 2.0);
        assert!(partial.est_error > 0.0);
    }

    #[test]
    fn tensor_examples() {
        let r = integrate_2d_tensor(|_, _| 1.0, iv(0.0, 1.0), iv(-1.0, 1.0), &spec()).unwrap();
        assert!((r.value - 2.0).abs() < 1e-14);
        let r = integrate_2d_tensor(|y, u| y * u, iv(0.0, 1.0), iv(-1.0, 1.0), &spec()).unwrap();
        assert!(r.value.abs() < 1e-14);
        // ∫₀^10 ∫₋₁¹ y² du dy = 2·1000/3.
        let r = integrate_2d_tensor(|y, _| y * y, iv(0.0, 10.0), iv(-1.0, 1.0), &spec()).unwrap();
        assert!((r.value - 2000.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn invalid_interval_rejected() {
        assert!(Interval::new(1.0, 1.0).is_err());
        assert!(Interval::new(0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn deterministic() {
        let f = |x: f64| (x.sin() * 7.0).exp() / (1.0 + x);
        let a = integrate_1d(f, iv(0.0, 20.0), &spec()).unwrap();
        let b = integrate_1d(f, iv(0.0, 20.0), &spec()).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.est_error.to_bits(), b.est_error.to_bits());
    }

    fn poly(c: &[f64], x: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
    }

    fn poly_integral(c: &[f64], lo: f64, hi: f64) -> f64 {
        c.iter()
            .enumerate()
            .map(|(k, &ck)| ck * (hi.powi(k as i32 + 1) - lo.powi(k as i32 + 1)) / (k as f64 + 1.0))
            .sum()
    }

    proptest! {
        #[test]
        fn linearity(
            a in prop::collection::vec(-5.0f64..5.0, 1..8),
            b in prop::collection::vec(-5.0f64..5.0, 1..8),
            alpha in -3.0f64..3.0,
            beta in -3.0f64..3.0,
        ) {
            let s = spec();
            let i = iv(-1.0, 2.0);
            let fa = integrate_1d(|x| poly(&a, x), i, &s).unwrap();
            let fb = integrate_1d(|x| poly(&b, x), i, &s).unwrap();
            let fab = integrate_1d(|x| alpha * poly(&a, x) + beta * poly(&b, x), i, &s).unwrap();
            let combo = alpha * fa.value + beta * fb.value;
            let tol = 2.0 * s.abs_tol.max(s.rel_tol * combo.abs());
            prop_assert!((fab.value - combo).abs() <= tol);
        }

        #[test]
        fn error_estimate_bounds_polynomial_error(
            c in prop::collection::vec(-10.0f64..10.0, 1..30),
            lo in -1.0f64..0.0,
            w in 0.1f64..2.0,
        ) {
            let hi = lo + w;
            let r = integrate_1d(|x| poly(&c, x), iv(lo, hi), &spec()).unwrap();
            let exact = poly_integral(&c, lo, hi);
            prop_assert!((r.value - exact).abs() <= r.est_error,
                "err {} > est {}", (r.value - exact).abs(), r.est_error);
        }
    }
}
