//! Spline cubic interpolation baseline: missing microphone columns are
//! reconstructed, one time sample at a time, by a natural cubic spline
//! through the measured columns.
//!
//! The interpolation coordinate is the microphone index — columns are
//! uniformly spaced along every supported arc, so index and arc length
//! agree up to an affine map that spline interpolation is invariant to.
//! Outside the measured range the boundary polynomial is evaluated
//! directly. With exactly 2 or 3 measured columns the fit degrades to
//! linear / quadratic.


use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::Mask;
use crate::room_sim::RirMatrix;

/// Natural cubic spline through (x_i, y_i): second derivatives solved by
/// the Thomas algorithm on the standard tridiagonal system, with zero
/// curvature at the end knots.
struct NaturalSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    second: Vec<f64>,
}

impl NaturalSpline {
    fn fit(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        let n = xs.len();
        debug_assert!(n >= 2 && ys.len() == n);
        let mut second = vec![0.0; n];
        if n > 2 {
            // interior equations:
            //   h_{i-1}·M_{i-1} + 2(h_{i-1}+h_i)·M_i + h_i·M_{i+1} = rhs_i
            let m = n - 2;
            let mut diag = vec![0.0; m];
            let mut upper = vec![0.0; m];
            let mut lower = vec![0.0; m];
            let mut rhs = vec![0.0; m];
            for i in 0..m {
                let h0 = xs[i + 1] - xs[i];
                let h1 = xs[i + 2] - xs[i + 1];
                lower[i] = h0;
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = 6.0 * ((ys[i + 2] - ys[i + 1]) / h1 - (ys[i + 1] - ys[i]) / h0);
            }
            // Thomas forward sweep
            for i in 1..m {
                let w = lower[i] / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            // back substitution
            second[m] = rhs[m - 1] / diag[m - 1];
            for i in (0..m - 1).rev() {
                second[i + 1] = (rhs[i] - upper[i] * second[i + 2]) / diag[i];
            }
        }
        NaturalSpline { xs, ys, second }
    }

    /// Evaluate at `x`; outside the knot range the boundary segment's
    /// cubic is extrapolated.
    fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let mut lo = 0;
        let mut hi = n - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.xs[mid] > x {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let h = self.xs[hi] - self.xs[lo];
        let a = (self.xs[hi] - x) / h;
        let b = (x - self.xs[lo]) / h;
        a * self.ys[lo]
            + b * self.ys[hi]
            + ((a * a * a - a) * self.second[lo] + (b * b * b - b) * self.second[hi]) * h * h / 6.0
    }
}

/// Quadratic through three points (Lagrange form).
fn quadratic_eval(xs: &[f64; 3], ys: &[f64; 3], x: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..3 {
        let mut l = ys[i];
        for j in 0..3 {
            if j != i {
                l *= (x - xs[j]) / (xs[i] - xs[j]);
            }
        }
        acc += l;
    }
    acc
}

/// Reconstruct missing columns by per-time-sample spline interpolation
/// across microphone index. Measured columns are copied verbatim.
pub fn sci_interpolate(matrix: &RirMatrix, mask: &Mask) -> Result<RirMatrix> {
    let (k, n) = matrix.data.dim();
    if mask.len() != n {
        return Err(Error::Shape(format!(
            "mask covers {} mics but matrix has {n}",
            mask.len()
        )));
    }
    let measured = mask.measured_indices();
    let missing = mask.missing_indices();
    if measured.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "spline baseline needs at least 2 measured columns, got {}",
            measured.len()
        )));
    }
    if missing.is_empty() {
        return Ok(matrix.clone());
    }

    let xs: Vec<f64> = measured.iter().map(|&i| i as f64).collect();
    let rows: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|r| {
            let ys: Vec<f64> = measured.iter().map(|&i| matrix.data[[r, i]]).collect();
            let mut out = vec![0.0; missing.len()];
            match measured.len() {
                2 => {
                    let slope = (ys[1] - ys[0]) / (xs[1] - xs[0]);
                    for (o, &i) in out.iter_mut().zip(&missing) {
                        *o = ys[0] + slope * (i as f64 - xs[0]);
                    }
                }
                3 => {
                    let x3 = [xs[0], xs[1], xs[2]];
                    let y3 = [ys[0], ys[1], ys[2]];
                    for (o, &i) in out.iter_mut().zip(&missing) {
                        *o = quadratic_eval(&x3, &y3, i as f64);
                    }
                }
                _ => {
                    let spline = NaturalSpline::fit(xs.clone(), ys);
                    for (o, &i) in out.iter_mut().zip(&missing) {
                        *o = spline.eval(i as f64);
                    }
                }
            }
            out
        })
        .collect();

    let mut data = matrix.data.clone();
    for (r, row) in rows.iter().enumerate() {
        for (j, &i) in missing.iter().enumerate() {
            data[[r, i]] = row[j];
        }
    }
    Ok(RirMatrix {
        data,
        sample_rate: matrix.sample_rate,
        geometry: matrix.geometry.clone(),
        source: matrix.source.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::make_mask;
    use crate::room_sim::{ArrayGeometry, Point3, SourceSpec};
    use approx::assert_relative_eq;
    use ndarray::Array2;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn matrix_from(data: Array2<f64>) -> RirMatrix {
        let n = data.ncols();
        RirMatrix {
            data,
            sample_rate: 8000.0,
            geometry: ArrayGeometry {
                positions: (0..n)
                    .map(|i| Point3::new(1.0 + 0.01 * i as f64, 1.0, 1.0))
                    .collect(),
                curvature: 0.0,
                label: "test".into(),
            },
            source: SourceSpec {
                position: Point3::new(2.0, 2.0, 1.0),
                angle_deg: 90.0,
            },
        }
    }

    /// Independent oracle: natural-spline second derivatives from a dense
    /// Gaussian elimination on the full (unreduced) linear system, plus a
    /// from-scratch piecewise evaluation. Deliberately not the Thomas path.
    fn dense_natural_spline_eval(xs: &[f64], ys: &[f64], x: f64) -> f64 {
        let n = xs.len();
        // unknowns: M_0..M_{n-1}; natural BC pins M_0 = M_{n-1} = 0
        let mut a = vec![vec![0.0f64; n]; n];
        let mut b = vec![0.0f64; n];
        a[0][0] = 1.0;
        a[n - 1][n - 1] = 1.0;
        for i in 1..n - 1 {
            let h0 = xs[i] - xs[i - 1];
            let h1 = xs[i + 1] - xs[i];
            a[i][i - 1] = h0 / 6.0;
            a[i][i] = (h0 + h1) / 3.0;
            a[i][i + 1] = h1 / 6.0;
            b[i] = (ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0;
        }
        // Gaussian elimination with partial pivoting
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&p, &q| a[p][col].abs().partial_cmp(&a[q][col].abs()).unwrap())
                .unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            let d = a[col][col];
            for row in col + 1..n {
                let f = a[row][col] / d;
                if f != 0.0 {
                    for c2 in col..n {
                        a[row][c2] -= f * a[col][c2];
                    }
                    b[row] -= f * b[col];
                }
            }
        }
        let mut m = vec![0.0f64; n];
        for row in (0..n).rev() {
            let mut acc = b[row];
            for c2 in row + 1..n {
                acc -= a[row][c2] * m[c2];
            }
            m[row] = acc / a[row][row];
        }
        // locate segment (clamped for extrapolation)
        let mut seg = 0;
        while seg + 2 < n && xs[seg + 1] <= x {
            seg += 1;
        }
        let h = xs[seg + 1] - xs[seg];
        let t0 = xs[seg + 1] - x;
        let t1 = x - xs[seg];
        m[seg] * t0 * t0 * t0 / (6.0 * h)
            + m[seg + 1] * t1 * t1 * t1 / (6.0 * h)
            + (ys[seg] / h - m[seg] * h / 6.0) * t0
            + (ys[seg + 1] / h - m[seg + 1] * h / 6.0) * t1
    }

    #[test]
    fn no_mask_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = matrix_from(Array2::from_shape_fn((32, 16), |_| rng.gen::<f64>()));
        let mask = make_mask(16, 0.0, 0).unwrap();
        let out = sci_interpolate(&m, &mask).unwrap();
        assert_eq!(out.data, m.data);
    }

    #[test]
    fn linear_field_exact_including_extrapolation() {
        // H[k,i] = c_k·i + d_k; force missing columns at both edges
        let k = 8;
        let n = 16;
        let data = Array2::from_shape_fn((k, n), |(r, i)| {
            (r as f64 + 1.0) * 0.3 * i as f64 + 2.0 - r as f64
        });
        let m = matrix_from(data.clone());
        let mut measured = vec![true; n];
        for i in [0usize, 1, 5, 9, 15] {
            measured[i] = false;
        }
        let mask = Mask::from_measured(measured, 0.3, 0).unwrap();
        let out = sci_interpolate(&m, &mask).unwrap();
        for r in 0..k {
            for i in 0..n {
                assert_relative_eq!(out.data[[r, i]], data[[r, i]], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn measured_points_pass_through_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = matrix_from(Array2::from_shape_fn((16, 32), |_| rng.gen::<f64>() - 0.5));
        let mask = make_mask(32, 0.5, 5).unwrap();
        let out = sci_interpolate(&m, &mask).unwrap();
        for &i in &mask.measured_indices() {
            for r in 0..16 {
                assert_eq!(out.data[[r, i]], m.data[[r, i]]);
            }
        }
    }

    #[test]
    fn matches_dense_solver_oracle_on_random_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..50 {
            let n = rng.gen_range(8..48);
            let k = rng.gen_range(1..6);
            let data = Array2::from_shape_fn((k, n), |_| 2.0 * rng.gen::<f64>() - 1.0);
            let m = matrix_from(data.clone());
            let ratio = rng.gen_range(0.1..0.8);
            let mask = match make_mask(n, ratio, trial) {
                Ok(ma) => ma,
                Err(_) => continue,
            };
            if mask.n_measured() < 4 {
                continue;
            }
            let out = sci_interpolate(&m, &mask).unwrap();
            let xs: Vec<f64> = mask.measured_indices().iter().map(|&i| i as f64).collect();
            for r in 0..k {
                let ys: Vec<f64> = mask
                    .measured_indices()
                    .iter()
                    .map(|&i| data[[r, i]])
                    .collect();
                for &i in &mask.missing_indices() {
                    let oracle = dense_natural_spline_eval(&xs, &ys, i as f64);
                    assert!(
                        (out.data[[r, i]] - oracle).abs() <= 1e-9,
                        "trial {trial} row {r} mic {i}: {} vs {oracle}",
                        out.data[[r, i]]
                    );
                }
            }
        }
    }

    #[test]
    fn sinusoidal_field_half_mask_matches_oracle() {
        let n = 64;
        let k = 32;
        let data = Array2::from_shape_fn((k, n), |(r, i)| {
            (0.2 * i as f64 + 0.05 * r as f64).sin()
        });
        let m = matrix_from(data.clone());
        let mask = make_mask(n, 0.5, 11).unwrap();
        let out = sci_interpolate(&m, &mask).unwrap();
        let xs: Vec<f64> = mask.measured_indices().iter().map(|&i| i as f64).collect();
        for r in 0..k {
            let ys: Vec<f64> = mask
                .measured_indices()
                .iter()
                .map(|&i| data[[r, i]])
                .collect();
            for &i in &mask.missing_indices() {
                let oracle = dense_natural_spline_eval(&xs, &ys, i as f64);
                assert!((out.data[[r, i]] - oracle).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn linearity_in_the_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = matrix_from(Array2::from_shape_fn((8, 24), |_| rng.gen::<f64>()));
        let b = matrix_from(Array2::from_shape_fn((8, 24), |_| rng.gen::<f64>()));
        let mask = make_mask(24, 0.4, 2).unwrap();
        let c = 3.7;
        let mut combo = a.clone();
        combo.data = &a.data * c + &b.data;
        let lhs = sci_interpolate(&combo, &mask).unwrap();
        let ra = sci_interpolate(&a, &mask).unwrap();
        let rb = sci_interpolate(&b, &mask).unwrap();
        for (l, (x, y)) in lhs.data.iter().zip(ra.data.iter().zip(rb.data.iter())) {
            assert_relative_eq!(*l, c * x + y, epsilon = 1e-9);
        }
    }

    #[test]
    fn degrades_to_linear_and_quadratic() {
        // 2 measured → linear through them
        let n = 8;
        let data = Array2::from_shape_fn((4, n), |(r, i)| (r as f64 + 1.0) * i as f64 * i as f64);
        let m = matrix_from(data);
        let mut measured = vec![false; n];
        measured[1] = true;
        measured[6] = true;
        let mask = Mask::from_measured(measured, 0.75, 0).unwrap();
        let out = sci_interpolate(&m, &mask).unwrap();
        for r in 0..4 {
            let y1 = m.data[[r, 1]];
            let y6 = m.data[[r, 6]];
            for i in 0..n {
                if i == 1 || i == 6 {
                    continue;
                }
                let expect = y1 + (y6 - y1) * (i as f64 - 1.0) / 5.0;
                assert_relative_eq!(out.data[[r, i]], expect, epsilon = 1e-10);
            }
        }

        // 3 measured → quadratic reproduced exactly
        let data = Array2::from_shape_fn((4, n), |(r, i)| {
            (r as f64 + 1.0) * (i as f64 * i as f64) - 2.0 * i as f64 + 0.5
        });
        let m = matrix_from(data.clone());
        let mut measured = vec![false; n];
        for i in [0usize, 3, 7] {
            measured[i] = true;
        }
        let mask = Mask::from_measured(measured, 0.6, 0).unwrap();
        let out = sci_interpolate(&m, &mask).unwrap();
        for r in 0..4 {
            for i in 0..n {
                assert_relative_eq!(out.data[[r, i]], data[[r, i]], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn rejects_insufficient_measurements() {
        let measured = vec![true, false, false, false];
        // from_measured itself refuses < 2 measured
        assert!(Mask::from_measured(measured, 0.75, 0).is_err());
    }
}
