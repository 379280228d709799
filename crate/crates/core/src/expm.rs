//! Dense complex matrix exponential by scaling and squaring with Padé
//! approximants of degree 3 to 13, chosen from the 1-norm (Higham 2005).

use ndarray::{Array2, Zip};
use num_complex::Complex64;

use crate::fock::OperatorMatrix;

const THETA_13: f64 = 5.371_920_351_148_152;

/// Degree, 1-norm threshold and coefficients of the low-order approximants.
const LOW_ORDER: [(usize, f64, &[f64]); 4] = [
    (3, 1.495_585_217_958_292e-2, &[120.0, 60.0, 12.0, 1.0]),
    (5, 2.539_398_330_063_230e-1, &[30_240.0, 15_120.0, 3_360.0, 420.0, 30.0, 1.0]),
    (
        7,
        9.504_178_996_162_932e-1,
        &[17_297_280.0, 8_648_640.0, 1_995_840.0, 277_200.0, 25_200.0, 1_512.0, 56.0, 1.0],
    ),
    (
        9,
        2.097_847_961_257_068,
        &[
            17_643_225_600.0,
            8_821_612_800.0,
            2_075_673_600.0,
            302_702_400.0,
            30_270_240.0,
            2_162_160.0,
            110_880.0,
            3_960.0,
            90.0,
            1.0,
        ],
    ),
];

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

/// `exp(m)` for a square complex matrix.
///
/// Panics if `m` is not square.
pub fn expm(m: &Array2<Complex64>) -> Array2<Complex64> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "expm needs a square matrix");
    if n == 0 {
        return Array2::zeros((0, 0));
    }

    let norm = one_norm(m);
    for &(degree, theta, coefs) in &LOW_ORDER {
        if norm <= theta {
            return pade_low(m, degree, coefs);
        }
    }
    let squarings = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = m.mapv(|z| z / 2f64.powi(squarings));
    let mut result = pade13(&scaled);
    for _ in 0..squarings {
        result = result.dot(&result);
    }
    result
}

impl OperatorMatrix {
    /// `exp(-i t H)` for this operator `H`.
    pub fn evolution(&self, t: f64) -> OperatorMatrix {
        let generator = self.entries().mapv(|z| z * Complex64::new(0.0, -t));
        OperatorMatrix::new(self.space(), expm(&generator)).expect("expm preserves shape")
    }
}

fn one_norm(m: &Array2<Complex64>) -> f64 {
    m.columns()
        .into_iter()
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn axpy_into(dst: &mut Array2<Complex64>, coef: f64, src: &Array2<Complex64>) {
    Zip::from(dst).and(src).for_each(|d, &s| *d += s * coef);
}

fn pade_low(a: &Array2<Complex64>, degree: usize, b: &[f64]) -> Array2<Complex64> {
    let n = a.nrows();
    let a2 = a.dot(a);
    let mut power: Array2<Complex64> = Array2::eye(n);
    let mut u = Array2::zeros((n, n));
    let mut v = Array2::zeros((n, n));
    for j in (0..=degree).step_by(2) {
        if j > 0 {
            power = power.dot(&a2);
        }
        axpy_into(&mut v, b[j], &power);
        axpy_into(&mut u, b[j + 1], &power);
    }
    let u = a.dot(&u);
    solve(&v - &u, &v + &u)
}

fn pade13(a: &Array2<Complex64>) -> Array2<Complex64> {
    let n = a.nrows();
    let b = &PADE_13;
    let ident: Array2<Complex64> = Array2::eye(n);
    let a2 = a.dot(a);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);

    let mut inner_u = Array2::zeros((n, n));
    axpy_into(&mut inner_u, b[13], &a6);
    axpy_into(&mut inner_u, b[11], &a4);
    axpy_into(&mut inner_u, b[9], &a2);
    let mut u = a6.dot(&inner_u);
    axpy_into(&mut u, b[7], &a6);
    axpy_into(&mut u, b[5], &a4);
    axpy_into(&mut u, b[3], &a2);
    axpy_into(&mut u, b[1], &ident);
    let u = a.dot(&u);

    let mut inner_v = Array2::zeros((n, n));
    axpy_into(&mut inner_v, b[12], &a6);
    axpy_into(&mut inner_v, b[10], &a4);
    axpy_into(&mut inner_v, b[8], &a2);
    let mut v = a6.dot(&inner_v);
    axpy_into(&mut v, b[6], &a6);
    axpy_into(&mut v, b[4], &a4);
    axpy_into(&mut v, b[2], &a2);
    axpy_into(&mut v, b[0], &ident);

    let p = &v + &u;
    let q = &v - &u;
    solve(q, p)
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn solve(a: Array2<Complex64>, b: Array2<Complex64>) -> Array2<Complex64> {
    let n = a.nrows();
    let m = b.ncols();
    let mut a: Vec<Complex64> = a.as_standard_layout().iter().copied().collect();
    let mut b: Vec<Complex64> = b.as_standard_layout().iter().copied().collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].norm().total_cmp(&a[j * n + col].norm()))
            .unwrap_or(col);
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            for k in 0..m {
                b.swap(col * m + k, pivot * m + k);
            }
        }
        let diag = a[col * n + col];
        let (head, tail) = a.split_at_mut((col + 1) * n);
        let pivot_row = &head[col * n + col..(col + 1) * n];
        let (b_head, b_tail) = b.split_at_mut((col + 1) * m);
        let pivot_b = &b_head[col * m..(col + 1) * m];
        for (row_a, row_b) in tail.chunks_exact_mut(n).zip(b_tail.chunks_exact_mut(m)) {
            let factor = row_a[col] / diag;
            if factor.norm() == 0.0 {
                continue;
            }
            for (x, &p) in row_a[col..].iter_mut().zip(pivot_row) {
                *x -= factor * p;
            }
            for (x, &p) in row_b.iter_mut().zip(pivot_b) {
                *x -= factor * p;
            }
        }
    }
    for col in (0..n).rev() {
        let (b_head, b_tail) = b.split_at_mut((col + 1) * m);
        let row = &mut b_head[col * m..];
        for j in col + 1..n {
            let coef = a[col * n + j];
            if coef.norm() == 0.0 {
                continue;
            }
            let solved = &b_tail[(j - col - 1) * m..(j - col) * m];
            for (x, &s) in row.iter_mut().zip(solved) {
                *x -= coef * s;
            }
        }
        let inv = Complex64::new(1.0, 0.0) / a[col * n + col];
        for x in row.iter_mut() {
            *x *= inv;
        }
    }
    Array2::from_shape_vec((n, m), b).expect("shape preserved")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn diagonal() {
        let m = array![[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.0, 2.0)]];
        let e = expm(&m);
        assert!((e[[0, 0]] - c(1f64.exp(), 0.0)).norm() < 1e-14);
        assert!((e[[1, 1]] - c(0.0, 2.0).exp()).norm() < 1e-14);
        assert!(e[[0, 1]].norm() < 1e-15);
    }

    #[test]
    fn nilpotent() {
        let m = array![[c(0.0, 0.0), c(3.0, 1.0)], [c(0.0, 0.0), c(0.0, 0.0)]];
        let e = expm(&m);
        assert!((e[[0, 1]] - c(3.0, 1.0)).norm() < 1e-14);
        assert!((e[[0, 0]] - c(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn low_order_branches_agree_with_series() {
        for scale in [1e-3, 0.1, 0.5, 1.5, 4.0] {
            let m = array![[c(0.0, scale), c(scale, 0.0)], [c(-scale, 0.0), c(0.0, -scale)]];
            let e = expm(&m);
            let mut series: Array2<Complex64> = Array2::eye(2);
            let mut term: Array2<Complex64> = Array2::eye(2);
            for k in 1..60 {
                term = term.dot(&m).mapv(|z| z / k as f64);
                series = series + &term;
            }
            let diff = (&e - &series).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(diff < 1e-13, "scale {scale} diff {diff}");
        }
    }

    #[test]
    fn rotation_with_squaring() {
        // exp(-i theta sigma_y) for a large angle exercises the squaring phase
        let theta = 40.0;
        let m = array![[c(0.0, 0.0), c(-theta, 0.0)], [c(theta, 0.0), c(0.0, 0.0)]];
        let e = expm(&m);
        assert!((e[[0, 0]].re - theta.cos()).abs() < 1e-12);
        assert!((e[[1, 0]].re - theta.sin()).abs() < 1e-12);
    }
}
