//! Small dense complex helpers: scaling-and-squaring matrix exponential and
//! least-squares slope fitting.

use ndarray::{Array1, Array2};
use ndarray_linalg::{c64, Solve};

/// `exp(A)` for a dense complex matrix, Pade(13) core with scaling and
/// squaring. Sizes here are tiny (n <= 64), so no norm-dependent order
/// selection is needed.
pub fn expm(a: &Array2<c64>) -> Array2<c64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let norm1 = (0..n)
        .map(|j| (0..n).map(|i| a[[i, j]].norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let theta13 = 5.371920351148152;
    let s = if norm1 > theta13 {
        (norm1 / theta13).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a.mapv(|x| x / 2f64.powi(s));

    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];

    let eye = Array2::<c64>::eye(n);
    let a2 = scaled.dot(&scaled);
    let a4 = a2.dot(&a2);
    let a6 = a2.dot(&a4);

    let u_inner = &a6 * B[13] + &a4 * B[11] + &a2 * B[9];
    let u = scaled.dot(&(a6.dot(&u_inner) + &a6 * B[7] + &a4 * B[5] + &a2 * B[3] + &eye * B[1]));
    let v_inner = &a6 * B[12] + &a4 * B[10] + &a2 * B[8];
    let v = a6.dot(&v_inner) + &a6 * B[6] + &a4 * B[4] + &a2 * B[2] + &eye * B[0];

    let rhs = &v + &u;
    let lhs = &v - &u;
    // Solve (V - U) X = (V + U) column by column.
    let mut result = Array2::<c64>::zeros((n, n));
    let lu = lhs;
    for j in 0..n {
        let col: Array1<c64> = rhs.column(j).to_owned();
        let x = lu.solve(&col).expect("Pade denominator is nonsingular");
        result.column_mut(j).assign(&x);
    }
    for _ in 0..s {
        result = result.dot(&result);
    }
    result
}

/// Ordinary least squares slope (and intercept) of `y` against `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Standard error of the OLS slope.
pub fn ols_slope_stderr(x: &[f64], y: &[f64]) -> f64 {
    let (slope, intercept) = ols_slope(x, y);
    let n = x.len();
    if n <= 2 {
        return f64::NAN;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - (slope * a + intercept);
            r * r
        })
        .sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    (sse / ((n - 2) as f64) / sxx).sqrt()
}
