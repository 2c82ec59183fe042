//! Standard normal distribution function and its inverse.
//!
//! `Φ` uses W. J. Cody's rational Chebyshev approximations (the same
//! three-range scheme as R's `pnorm`), which keep full relative precision in
//! both tails. The quantile starts from the inverse complementary error
//! function and is then polished with Newton steps against this `Φ`, so the
//! two functions are consistent to rounding.

use statrs::function::erf::erfc_inv;
use std::f64::consts::SQRT_2;

const A: [f64; 5] = [
    2.2352520354606839287,
    161.02823106855587881,
    1067.6894854603709582,
    18154.981253343561249,
    0.065682337918207449113,
];
const B: [f64; 4] = [
    47.20258190468824187,
    976.09855173777669322,
    10260.932208618978205,
    45507.789335026729956,
];
const C: [f64; 9] = [
    0.39894151208813466764,
    8.8831497943883759412,
    93.506656132177855979,
    597.27027639480026226,
    2494.5375852903726711,
    6848.1904505362823326,
    11602.651437647350124,
    9842.7148383839780218,
    1.0765576773720192317e-8,
];
const D: [f64; 8] = [
    22.266688044328115691,
    235.38790178262499861,
    1519.377599407554805,
    6485.558298266760755,
    18615.571640885098091,
    34900.952721145977266,
    38912.003286093271411,
    19685.429676859990727,
];
const P: [f64; 6] = [
    0.21589853405795699,
    0.1274011611602473639,
    0.022235277870649807,
    0.001421619193227893466,
    2.9112874951168792e-5,
    0.02307344176494017303,
];
const Q: [f64; 5] = [
    1.28426009614491121,
    0.468238212480865118,
    0.0659881378689285515,
    0.00378239633202758244,
    7.29751555083966205e-5,
];
const FRAC_1_SQRT_2PI: f64 = 0.398942280401432677939946059934;

/// `(Φ(x), 1 - Φ(x))`, both to full relative precision.
pub fn cdf_both(x: f64) -> (f64, f64) {
    if x.is_nan() {
        return (f64::NAN, f64::NAN);
    }
    let y = x.abs();
    if y <= 0.67448975 {
        let (mut num, mut den) = (0.0, 0.0);
        if y > f64::EPSILON * 0.5 {
            let xsq = x * x;
            num = A[4] * xsq;
            den = xsq;
            for i in 0..3 {
                num = (num + A[i]) * xsq;
                den = (den + B[i]) * xsq;
            }
        }
        let t = x * (num + A[3]) / (den + B[3]);
        return (0.5 + t, 0.5 - t);
    }
    let tail = if y <= 32f64.sqrt() {
        let mut num = C[8] * y;
        let mut den = y;
        for i in 0..7 {
            num = (num + C[i]) * y;
            den = (den + D[i]) * y;
        }
        let t = (num + C[7]) / (den + D[7]);
        gaussian_factor(y) * t
    } else if y < 38.5 {
        let xsq = 1.0 / (x * x);
        let mut num = P[5] * xsq;
        let mut den = xsq;
        for i in 0..4 {
            num = (num + P[i]) * xsq;
            den = (den + Q[i]) * xsq;
        }
        let t = xsq * (num + P[4]) / (den + Q[4]);
        gaussian_factor(y) * (FRAC_1_SQRT_2PI - t) / y
    } else {
        0.0
    };
    if x > 0.0 {
        (1.0 - tail, tail)
    } else {
        (tail, 1.0 - tail)
    }
}

/// `exp(-y²/2)` split as `exp(-a²/2)·exp(-(y-a)(y+a)/2)` with `a = ⌊16y⌋/16`
/// to avoid cancellation in `y²`.
fn gaussian_factor(y: f64) -> f64 {
    let a = (y * 16.0).trunc() / 16.0;
    let del = (y - a) * (y + a);
    (-a * a * 0.5).exp() * (-del * 0.5).exp()
}

/// `Φ(x)`.
pub fn cdf(x: f64) -> f64 {
    cdf_both(x).0
}

/// `1 - Φ(x)`, evaluated without cancellation.
pub fn upper_tail(x: f64) -> f64 {
    cdf_both(x).1
}

pub fn density(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * gaussian_factor(x.abs())
}

/// `Φ⁻¹(u)` for `u` in the open unit interval.
pub fn quantile(u: f64) -> f64 {
    debug_assert!(u > 0.0 && u < 1.0);
    if u > 0.5 {
        // exact for u in (0.5, 1)
        return -lower_quantile(1.0 - u);
    }
    lower_quantile(u)
}

fn lower_quantile(u: f64) -> f64 {
    if u == 0.5 {
        return 0.0;
    }
    let mut x = -SQRT_2 * erfc_inv(2.0 * u);
    for _ in 0..2 {
        let f = density(x);
        if f == 0.0 {
            break;
        }
        // relative residual, stable in the lower tail
        let step = (cdf(x) - u) / f;
        x -= step;
    }
    x
}
