//! Matrix exponential by scaling and squaring with the degree-13 Padé
//! approximant (Higham 2005).

use nalgebra::DMatrix;

const THETA_13: f64 = 5.371_920_351_148_152;

const PADE_13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

fn norm_one(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `e^A` for a square matrix. Returns `None` if the Padé denominator is
/// singular, which does not happen for finite input after scaling.
pub fn expm(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let m = a.nrows();
    assert_eq!(m, a.ncols(), "expm needs a square matrix");
    let norm = norm_one(a);
    if !norm.is_finite() {
        return None;
    }
    let squarings = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let a = a * 2.0f64.powi(-squarings);
    let b = &PADE_13;
    let ident = DMatrix::<f64>::identity(m, m);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &ident * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &ident * b[0];

    let mut r = (&v - &u).lu().solve(&(&v + &u))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    Some(r)
}
