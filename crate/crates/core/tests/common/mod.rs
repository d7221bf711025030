//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use num_complex::Complex64;

use nss_etd::spectral::{forward_transform, inverse_transform};
use nss_etd::{Field, ModelParams, SchemeParams, STABILITY_THRESHOLD};

/// Zeroes the Nyquist row and column, where the first-derivative symbol
/// vanishes and summation by parts does not hold.
pub fn band_limited(f: &Field) -> Field {
    let grid = *f.grid();
    let nyq = grid.nyquist_index();
    let mut s = forward_transform(f);
    let m = grid.points();
    for p in 0..m {
        for q in 0..m {
            if p == nyq || q == nyq {
                s.coeffs_mut()[p * m + q] = Complex64::new(0.0, 0.0);
            }
        }
    }
    inverse_transform(&s).unwrap()
}

pub fn all_schemes(model: ModelParams) -> [SchemeParams; 3] {
    [
        SchemeParams::etd1(model, 0.125),
        SchemeParams::etdms2(model, 0.125),
        SchemeParams::setdms2(model, STABILITY_THRESHOLD),
    ]
}

/// `(x tau, phi0, phi1)` at `tau = 0.1`, computed with 50-digit arithmetic.
pub const PHI_TABLE: [(f64, f64, f64); 29] = [
    (1e-12, 0.09999999999995, 0.049999999999983333333),
    (3e-12, 0.09999999999985, 0.04999999999995),
    (1e-11, 0.0999999999995, 0.049999999999833333333),
    (3e-11, 0.0999999999985, 0.0499999999995),
    (1e-10, 0.099999999995, 0.049999999998333333333),
    (3e-10, 0.099999999985000000001, 0.049999999995),
    (1e-9, 0.099999999950000000017, 0.049999999983333333337),
    (3e-9, 0.09999999985000000015, 0.049999999950000000037),
    (1e-8, 0.099999999500000001667, 0.04999999983333333375),
    (3e-8, 0.099999998500000015, 0.04999999950000000375),
    (1e-7, 0.099999995000000166667, 0.049999998333333375),
    (3e-7, 0.0999999850000015, 0.049999995000000375),
    (1e-6, 0.099999950000016666663, 0.049999983333337499999),
    (3e-6, 0.099999850000149999888, 0.049999950000037499978),
    (1e-5, 0.0999995000016666625, 0.049999833333749999167),
    (3e-5, 0.099998500014999887501, 0.0499995000037499775),
    (1e-4, 0.099995000166662500083, 0.049998333374999166681),
    (3e-4, 0.09998500149988750675, 0.049995000374977501125),
    (1e-3, 0.099950016662500833194, 0.049983337499166805536),
    (3e-3, 0.099850149887567466264, 0.04995003747751124518),
    (0.01, 0.099501662508319464261, 0.049833749168053573906),
    (0.03, 0.098514888171639410225, 0.04950372761201965917),
    (0.1, 0.095162581964040426836, 0.048374180359595731642),
    (0.3, 0.086393926439427377978, 0.045353578535242073408),
    (1.0, 0.06321205588285576784, 0.03678794411714423216),
    (3.0, 0.031673764387737868567, 0.022775411870754043811),
    (10.0, 0.0099995460007023751515, 0.0090000453999297624849),
    (30.0, 0.0033333333333330214126, 0.0032222222222222326196),
    (100.0, 0.001, 0.00099),
];
