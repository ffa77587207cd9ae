//! Matrix exponential for small dense matrices via Padé(6) with scaling
//! and squaring. Rate generators here are 3x3 with norms up to ~1e6 after
//! multiplying by a step, which scaling handles without drama.

use nalgebra::Matrix3;

/// exp(A) for a 3x3 matrix.
pub fn expm3(a: &Matrix3<f64>) -> Matrix3<f64> {
    let norm = a.abs().row_sum().max(); // infinity norm
    let scale_pow = if norm > 0.25 {
        (norm / 0.25).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a / 2f64.powi(scale_pow);
    let mut result = pade6(&scaled);
    for _ in 0..scale_pow {
        result = result * result;
    }
    result
}

fn pade6(a: &Matrix3<f64>) -> Matrix3<f64> {
    // Coefficients of the (6,6) Padé approximant to exp:
    // c_k = (12-k)! 6! / (12! k! (6-k)!).
    const C: [f64; 7] = [
        1.0,
        0.5,
        5.0 / 44.0,
        1.0 / 66.0,
        1.0 / 792.0,
        1.0 / 15840.0,
        1.0 / 665280.0,
    ];
    let id = Matrix3::identity();
    let a2 = a * a;
    let a4 = a2 * a2;
    let a6 = a2 * a4;
    let even = id * C[0] + a2 * C[2] + a4 * C[4] + a6 * C[6];
    let odd = a * (id * C[1] + a2 * C[3] + a4 * C[5]);
    let num = even + odd;
    let den = even - odd;
    den.try_inverse().expect("Padé denominator is invertible") * num
}
