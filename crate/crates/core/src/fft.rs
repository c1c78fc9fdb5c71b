//! FFT kernels on row-major lattices.
//!
//! The continuous transform `(2pi)^{-1/2} * integral f(x) e^{-i x xi} dx` is
//! discretised per axis with the Riemann rule. With `x_m = a + m h` and the
//! centred dual samples `xi_k = (k - n/2) * 2pi / (n h)`, the sum reduces to a
//! plain FFT of `(-1)^m f_m` followed by the phase `e^{-i a xi_k}`.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::lattice::{strides, Axis, Lattice};

type C64 = Complex64;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

/// Apply `f` to every 1-d line of `data` along `axis`.
fn for_each_line(data: &mut [C64], shape: &[usize], axis: usize, mut f: impl FnMut(&mut [C64])) {
    let n = shape[axis];
    let stride = strides(shape)[axis];
    let block = n * stride;
    let mut buf = vec![C64::new(0.0, 0.0); n];
    for outer in (0..data.len()).step_by(block) {
        for inner in 0..stride {
            let base = outer + inner;
            for (k, b) in buf.iter_mut().enumerate() {
                *b = data[base + k * stride];
            }
            f(&mut buf);
            for (k, b) in buf.iter().enumerate() {
                data[base + k * stride] = *b;
            }
        }
    }
}

/// Unnormalized FFT along one axis of a row-major array.
pub(crate) fn raw_fft_axis(data: &mut [C64], shape: &[usize], axis: usize, inverse: bool) {
    let fft = plan(shape[axis], inverse);
    let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for_each_line(data, shape, axis, |line| fft.process_with_scratch(line, &mut scratch));
}

/// Continuous-normalized forward transform along `axis`: samples on
/// `axis_in` become samples on `axis_in.dual()`.
pub(crate) fn forward_axis(data: &mut [C64], shape: &[usize], axis: usize, axis_in: &Axis) {
    let n = axis_in.n;
    let dual = axis_in.dual();
    let scale = axis_in.step / (2.0 * PI).sqrt();
    let post: Vec<C64> = (0..n)
        .map(|k| C64::from_polar(scale, -axis_in.offset * dual.coord(k)))
        .collect();
    let fft = plan(n, false);
    let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for_each_line(data, shape, axis, |line| {
        for (m, v) in line.iter_mut().enumerate() {
            if m % 2 == 1 {
                *v = -*v;
            }
        }
        fft.process_with_scratch(line, &mut scratch);
        for (v, p) in line.iter_mut().zip(&post) {
            *v *= p;
        }
    });
}

/// Inverse of [`forward_axis`]: samples on the centred dual of `target`
/// become samples on `target`.
pub(crate) fn inverse_axis(data: &mut [C64], shape: &[usize], axis: usize, target: &Axis) {
    let n = target.n;
    let dual = target.dual();
    let pre: Vec<C64> = (0..n)
        .map(|k| C64::from_polar(1.0, target.offset * dual.coord(k)))
        .collect();
    let scale = dual.step / (2.0 * PI).sqrt();
    let fft = plan(n, true);
    let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for_each_line(data, shape, axis, |line| {
        for (v, p) in line.iter_mut().zip(&pre) {
            *v *= p;
        }
        fft.process_with_scratch(line, &mut scratch);
        for (m, v) in line.iter_mut().enumerate() {
            let s = if m % 2 == 1 { -scale } else { scale };
            *v *= s;
        }
    });
}

/// Forward transform along the given axes of `lattice`.
pub(crate) fn forward(data: &mut [C64], lattice: &Lattice, axes: &[usize]) {
    let shape = lattice.shape();
    for &k in axes {
        forward_axis(data, &shape, k, lattice.axis(k));
    }
}

/// Inverse transform along the given axes; `target` is the lattice the
/// result lives on (its dual along `axes` is where `data` lives).
pub(crate) fn inverse(data: &mut [C64], target: &Lattice, axes: &[usize]) {
    let shape = target.shape();
    for &k in axes {
        inverse_axis(data, &shape, k, target.axis(k));
    }
}

/// Linear convolution along `axes` with zero fill:
/// `c[i] = sum_j a[i - j + origin] * b[j]`, other axes are parameters.
/// Shapes of `a` and `b` (and `c`) are all `shape`.
pub(crate) fn convolve_axes(
    a: &[C64],
    b: &[C64],
    shape: &[usize],
    axes: &[usize],
    origin: &[usize],
) -> Vec<C64> {
    let mut padded_shape = shape.to_vec();
    for &k in axes {
        padded_shape[k] = 2 * shape[k];
    }
    let mut pa = pad(a, shape, &padded_shape);
    let mut pb = pad(b, shape, &padded_shape);
    for &k in axes {
        raw_fft_axis(&mut pa, &padded_shape, k, false);
        raw_fft_axis(&mut pb, &padded_shape, k, false);
    }
    for (x, y) in pa.iter_mut().zip(&pb) {
        *x *= y;
    }
    for &k in axes {
        raw_fft_axis(&mut pa, &padded_shape, k, true);
    }
    let norm: f64 = axes.iter().map(|&k| padded_shape[k] as f64).product();
    // extract c[i] = full[i + origin] along conv axes
    let out_len: usize = shape.iter().product();
    let mut out = vec![C64::new(0.0, 0.0); out_len];
    let pstr = strides(&padded_shape);
    let mut conv_origin = vec![0usize; shape.len()];
    for (&k, &o) in axes.iter().zip(origin) {
        conv_origin[k] = o;
    }
    let mut multi = vec![0usize; shape.len()];
    for (idx, o) in out.iter_mut().enumerate() {
        let mut rem = idx;
        for k in (0..shape.len()).rev() {
            multi[k] = rem % shape[k];
            rem /= shape[k];
        }
        let mut p = 0usize;
        for k in 0..shape.len() {
            p += (multi[k] + conv_origin[k]) * pstr[k];
        }
        *o = pa[p] / norm;
    }
    out
}

fn pad(a: &[C64], shape: &[usize], padded: &[usize]) -> Vec<C64> {
    let len: usize = padded.iter().product();
    let mut out = vec![C64::new(0.0, 0.0); len];
    let pstr = strides(padded);
    let mut rem;
    for (idx, v) in a.iter().enumerate() {
        rem = idx;
        let mut p = 0usize;
        for k in (0..shape.len()).rev() {
            p += (rem % shape[k]) * pstr[k];
            rem /= shape[k];
        }
        out[p] = *v;
    }
    out
}

/// Trigonometric (zero-padded FFT) interpolation onto the half-step lattice
/// along `axes`: each listed axis doubles its sample count and the even
/// samples reproduce the input exactly. Periodic in the sampled window.
pub(crate) fn upsample2(data: &[C64], shape: &[usize], axes: &[usize]) -> (Vec<C64>, Vec<usize>) {
    let mut cur = data.to_vec();
    let mut cur_shape = shape.to_vec();
    for &k in axes {
        let n = cur_shape[k];
        let mut next_shape = cur_shape.clone();
        next_shape[k] = 2 * n;
        raw_fft_axis(&mut cur, &cur_shape, k, false);
        let mut next = vec![C64::new(0.0, 0.0); cur.len() * 2];
        let s_in = strides(&cur_shape)[k];
        let s_out = strides(&next_shape)[k];
        let outer_in = n * s_in;
        let outer_out = 2 * n * s_out;
        let blocks = cur.len() / outer_in;
        for b in 0..blocks {
            for inner in 0..s_in {
                let src = |j: usize| cur[b * outer_in + inner + j * s_in];
                let dst = b * outer_out + inner;
                for j in 0..n {
                    let v = src(j);
                    if n.is_multiple_of(2) && j == n / 2 {
                        next[dst + j * s_out] += v * 0.5;
                        next[dst + (j + n) * s_out] += v * 0.5;
                    } else if j < n / 2 || (n % 2 == 1 && j == n / 2) {
                        next[dst + j * s_out] = v;
                    } else {
                        next[dst + (j + n) * s_out] = v;
                    }
                }
            }
        }
        raw_fft_axis(&mut next, &next_shape, k, true);
        let scale = 1.0 / n as f64;
        for v in next.iter_mut() {
            *v *= scale;
        }
        cur = next;
        cur_shape = next_shape;
    }
    (cur, cur_shape)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn forward_matches_direct_sum() {
        let ax = Axis::centered(16, 0.3, 0.45);
        let vals: Vec<C64> = (0..16).map(|i| c((i as f64).sin(), (i as f64 * 0.7).cos())).collect();
        let mut out = vals.clone();
        forward_axis(&mut out, &[16], 0, &ax);
        let dual = ax.dual();
        for k in 0..16 {
            let xi = dual.coord(k);
            let mut s = c(0.0, 0.0);
            for (m, v) in vals.iter().enumerate() {
                s += v * C64::from_polar(1.0, -ax.coord(m) * xi);
            }
            s *= ax.step / (2.0 * PI).sqrt();
            assert!((s - out[k]).norm() < 1e-12);
        }
    }

    #[test]
    fn inverse_undoes_forward() {
        let ax = Axis::centered(8, 0.5, 1.0);
        let lat = Lattice::new(vec![ax.clone(), Axis::centered(4, 1.0, 0.0)]);
        let vals: Vec<C64> = (0..32).map(|i| c(i as f64, -(i as f64) * 0.5)).collect();
        let mut w = vals.clone();
        forward(&mut w, &lat, &[0, 1]);
        inverse(&mut w, &lat, &[0, 1]);
        for (a, b) in w.iter().zip(&vals) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn convolve_axes_matches_direct() {
        let shape = [6, 5];
        let a: Vec<C64> = (0..30).map(|i| c((i as f64 * 0.37).sin(), 0.1 * i as f64)).collect();
        let b: Vec<C64> = (0..30).map(|i| c((i as f64 * 0.11).cos(), -0.2)).collect();
        let origin = [3usize, 2usize];
        let got = convolve_axes(&a, &b, &shape, &[0, 1], &origin);
        for i0 in 0..6isize {
            for i1 in 0..5isize {
                let mut s = c(0.0, 0.0);
                for j0 in 0..6isize {
                    for j1 in 0..5isize {
                        let k0 = i0 - j0 + 3;
                        let k1 = i1 - j1 + 2;
                        if (0..6).contains(&k0) && (0..5).contains(&k1) {
                            s += a[(k0 * 5 + k1) as usize] * b[(j0 * 5 + j1) as usize];
                        }
                    }
                }
                assert!((s - got[(i0 * 5 + i1) as usize]).norm() < 1e-10);
            }
        }
        // partial convolution along axis 1 only
        let got = convolve_axes(&a, &b, &shape, &[1], &[2]);
        for i0 in 0..6 {
            for i1 in 0..5isize {
                let mut s = c(0.0, 0.0);
                for j1 in 0..5isize {
                    let k1 = i1 - j1 + 2;
                    if (0..5).contains(&k1) {
                        s += a[i0 * 5 + k1 as usize] * b[i0 * 5 + j1 as usize];
                    }
                }
                assert!((s - got[i0 * 5 + i1 as usize]).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn upsample_keeps_even_samples_and_interpolates_trig() {
        let n = 16;
        let vals: Vec<C64> = (0..n)
            .map(|m| {
                let t = 2.0 * PI * m as f64 / n as f64;
                c((2.0 * t).cos() + 0.5 * (3.0 * t).sin(), 0.0)
            })
            .collect();
        let (up, shape) = upsample2(&vals, &[n], &[0]);
        assert_eq!(shape, vec![2 * n]);
        for m in 0..2 * n {
            let t = PI * m as f64 / n as f64;
            let want = (2.0 * t).cos() + 0.5 * (3.0 * t).sin();
            assert!((up[m] - c(want, 0.0)).norm() < 1e-12, "m={m}");
        }
    }
}
