//! Raw numeric kernels over flat row-major slices.
//!
//! These are pure functions with no tape bookkeeping; [`crate::graph`] calls
//! them for both forward and backward passes. Keeping them free-standing
//! makes them directly testable against hand-written summation oracles.

use crate::tensor::Elem;

/// C[m,n] += A[m,k] * B[k,n]
pub fn matmul<E: Elem>(a: &[E], b: &[E], m: usize, k: usize, n: usize, out: &mut [E]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for j in 0..n {
                crow[j] += av * brow[j];
            }
        }
    }
}

/// C[m,k] += A[m,n] * B[k,n]^T  (rows of A dotted with rows of B)
pub fn matmul_nt<E: Elem>(a: &[E], b: &[E], m: usize, n: usize, k: usize, out: &mut [E]) {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * k);
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        let crow = &mut out[i * k..(i + 1) * k];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let mut acc = E::zero();
            for j in 0..n {
                acc += arow[j] * brow[j];
            }
            crow[p] += acc;
        }
    }
}

/// C[k,n] += A[m,k]^T * B[m,n]
pub fn matmul_tn<E: Elem>(a: &[E], b: &[E], m: usize, k: usize, n: usize, out: &mut [E]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let crow = &mut out[p * n..(p + 1) * n];
            for j in 0..n {
                crow[j] += av * brow[j];
            }
        }
    }
}

/// Output spatial size of a convolution axis, if the geometry is valid.
pub fn conv_out_size(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if stride == 0 || kernel == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Output spatial size of a transposed convolution axis.
pub fn conv_transpose_out_size(
    input: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
) -> Option<usize> {
    let grown = (input - 1) * stride + kernel;
    if input == 0 || stride == 0 || grown < 2 * pad + 1 {
        return None;
    }
    Some(grown - 2 * pad)
}

pub struct ConvDims {
    pub batch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub k_h: usize,
    pub k_w: usize,
    pub out_c: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub stride: usize,
    pub pad: usize,
}

/// out[n,oh,ow,co] = sum_{i,j,ci} x[n, oh*s-p+i, ow*s-p+j, ci] * w[i,j,ci,co]
pub fn conv2d<E: Elem>(x: &[E], w: &[E], d: &ConvDims, out: &mut [E]) {
    for n in 0..d.batch {
        for oh in 0..d.out_h {
            for ow in 0..d.out_w {
                let orow =
                    &mut out[((n * d.out_h + oh) * d.out_w + ow) * d.out_c..][..d.out_c];
                for i in 0..d.k_h {
                    let ih = (oh * d.stride + i) as isize - d.pad as isize;
                    if ih < 0 || ih >= d.in_h as isize {
                        continue;
                    }
                    for j in 0..d.k_w {
                        let iw = (ow * d.stride + j) as isize - d.pad as isize;
                        if iw < 0 || iw >= d.in_w as isize {
                            continue;
                        }
                        let xrow = &x[((n * d.in_h + ih as usize) * d.in_w + iw as usize)
                            * d.in_c..][..d.in_c];
                        let wbase = (i * d.k_w + j) * d.in_c * d.out_c;
                        for (ci, &xv) in xrow.iter().enumerate() {
                            let wrow = &w[wbase + ci * d.out_c..][..d.out_c];
                            for co in 0..d.out_c {
                                orow[co] += xv * wrow[co];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// dx for conv2d given the output gradient.
pub fn conv2d_backward_input<E: Elem>(gout: &[E], w: &[E], d: &ConvDims, dx: &mut [E]) {
    for n in 0..d.batch {
        for oh in 0..d.out_h {
            for ow in 0..d.out_w {
                let grow = &gout[((n * d.out_h + oh) * d.out_w + ow) * d.out_c..][..d.out_c];
                for i in 0..d.k_h {
                    let ih = (oh * d.stride + i) as isize - d.pad as isize;
                    if ih < 0 || ih >= d.in_h as isize {
                        continue;
                    }
                    for j in 0..d.k_w {
                        let iw = (ow * d.stride + j) as isize - d.pad as isize;
                        if iw < 0 || iw >= d.in_w as isize {
                            continue;
                        }
                        let xrow = &mut dx[((n * d.in_h + ih as usize) * d.in_w
                            + iw as usize)
                            * d.in_c..][..d.in_c];
                        let wbase = (i * d.k_w + j) * d.in_c * d.out_c;
                        for (ci, xg) in xrow.iter_mut().enumerate() {
                            let wrow = &w[wbase + ci * d.out_c..][..d.out_c];
                            let mut acc = E::zero();
                            for co in 0..d.out_c {
                                acc += grow[co] * wrow[co];
                            }
                            *xg += acc;
                        }
                    }
                }
            }
        }
    }
}

/// dw for conv2d given the output gradient.
pub fn conv2d_backward_weight<E: Elem>(gout: &[E], x: &[E], d: &ConvDims, dw: &mut [E]) {
    for n in 0..d.batch {
        for oh in 0..d.out_h {
            for ow in 0..d.out_w {
                let grow = &gout[((n * d.out_h + oh) * d.out_w + ow) * d.out_c..][..d.out_c];
                for i in 0..d.k_h {
                    let ih = (oh * d.stride + i) as isize - d.pad as isize;
                    if ih < 0 || ih >= d.in_h as isize {
                        continue;
                    }
                    for j in 0..d.k_w {
                        let iw = (ow * d.stride + j) as isize - d.pad as isize;
                        if iw < 0 || iw >= d.in_w as isize {
                            continue;
                        }
                        let xrow = &x[((n * d.in_h + ih as usize) * d.in_w + iw as usize)
                            * d.in_c..][..d.in_c];
                        let wbase = (i * d.k_w + j) * d.in_c * d.out_c;
                        for (ci, &xv) in xrow.iter().enumerate() {
                            let wrow = &mut dw[wbase + ci * d.out_c..][..d.out_c];
                            for co in 0..d.out_c {
                                wrow[co] += xv * grow[co];
                            }
                        }
                    }
                }
            }
        }
    }
}

pub struct ConvTDims {
    pub batch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub k_h: usize,
    pub k_w: usize,
    pub out_c: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub stride: usize,
    pub pad: usize,
}

/// Scatter form: out[n, ih*s-p+i, iw*s-p+j, co] += x[n,ih,iw,ci] * w[i,j,ci,co]
pub fn conv_transpose2d<E: Elem>(x: &[E], w: &[E], d: &ConvTDims, out: &mut [E]) {
    for n in 0..d.batch {
        for ih in 0..d.in_h {
            for iw in 0..d.in_w {
                let xrow = &x[((n * d.in_h + ih) * d.in_w + iw) * d.in_c..][..d.in_c];
                for i in 0..d.k_h {
                    let oh = (ih * d.stride + i) as isize - d.pad as isize;
                    if oh < 0 || oh >= d.out_h as isize {
                        continue;
                    }
                    for j in 0..d.k_w {
                        let ow = (iw * d.stride + j) as isize - d.pad as isize;
                        if ow < 0 || ow >= d.out_w as isize {
                            continue;
                        }
                        let orow = &mut out[((n * d.out_h + oh as usize) * d.out_w
                            + ow as usize)
                            * d.out_c..][..d.out_c];
                        let wbase = (i * d.k_w + j) * d.in_c * d.out_c;
                        for (ci, &xv) in xrow.iter().enumerate() {
                            let wrow = &w[wbase + ci * d.out_c..][..d.out_c];
                            for co in 0..d.out_c {
                                orow[co] += xv * wrow[co];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// dx for conv_transpose2d: gathers back from the output gradient.
pub fn conv_transpose2d_backward_input<E: Elem>(
    gout: &[E],
    w: &[E],
    d: &ConvTDims,
    dx: &mut [E],
) {
    for n in 0..d.batch {
        for ih in 0..d.in_h {
            for iw in 0..d.in_w {
                let xrow = &mut dx[((n * d.in_h + ih) * d.in_w + iw) * d.in_c..][..d.in_c];
                for i in 0..d.k_h {
                    let oh = (ih * d.stride + i) as isize - d.pad as isize;
                    if oh < 0 || oh >= d.out_h as isize {
                        continue;
                    }
                    for j in 0..d.k_w {
                        let ow = (iw * d.stride + j) as isize - d.pad as isize;
                        if ow < 0 || ow >= d.out_w as isize {
                            continue;
                        }
                        let grow = &gout[((n * d.out_h + oh as usize) * d.out_w
                            + ow as usize)
                            * d.out_c..][..d.out_c];
                        let wbase = (i * d.k_w + j) * d.in_c * d.out_c;
                        for (ci, xg) in xrow.iter_mut().enumerate() {
                            let wrow = &w[wbase + ci * d.out_c..][..d.out_c];
                            let mut acc = E::zero();
                            for co in 0..d.out_c {
                                acc += grow[co] * wrow[co];
                            }
                            *xg += acc;
                        }
                    }
                }
            }
        }
    }
}

/// dw for conv_transpose2d.
pub fn conv_transpose2d_backward_weight<E: Elem>(
    gout: &[E],
    x: &[E],
    d: &ConvTDims,
    dw: &mut [E],
) {
    for n in 0..d.batch {
        for ih in 0..d.in_h {
            for iw in 0..d.in_w {
                let xrow = &x[((n * d.in_h + ih) * d.in_w + iw) * d.in_c..][..d.in_c];
                for i in 0..d.k_h {
                    let oh = (ih * d.stride + i) as isize - d.pad as isize;
                    if oh < 0 || oh >= d.out_h as isize {
                        continue;
                    }
                    for j in 0..d.k_w {
                        let ow = (iw * d.stride + j) as isize - d.pad as isize;
                        if ow < 0 || ow >= d.out_w as isize {
                            continue;
                        }
                        let grow = &gout[((n * d.out_h + oh as usize) * d.out_w
                            + ow as usize)
                            * d.out_c..][..d.out_c];
                        let wbase = (i * d.k_w + j) * d.in_c * d.out_c;
                        for (ci, &xv) in xrow.iter().enumerate() {
                            let wrow = &mut dw[wbase + ci * d.out_c..][..d.out_c];
                            for co in 0..d.out_c {
                                wrow[co] += xv * grow[co];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Source taps for one bilinear output axis under the half-pixel convention:
/// src = (dst + 0.5) / scale - 0.5, clamped into the valid range.
pub fn bilinear_taps(out_size: usize, in_size: usize, scale: usize) -> Vec<(usize, usize, f64)> {
    (0..out_size)
        .map(|dst| {
            let src = ((dst as f64 + 0.5) / scale as f64 - 0.5)
                .clamp(0.0, (in_size - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(in_size - 1);
            let frac = if i1 == i0 { 0.0 } else { src - i0 as f64 };
            (i0, i1, frac)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity() {
        // [[1,0],[0,1]] * [[3,4],[5,6]] = [[3,4],[5,6]]
        let eye = [1.0, 0.0, 0.0, 1.0];
        let b = [3.0, 4.0, 5.0, 6.0];
        let mut out = [0.0f64; 4];
        matmul(&eye, &b, 2, 2, 2, &mut out);
        assert_eq!(out, b);
    }

    #[test]
    fn matmul_row_times_column_of_ones() {
        let a = [1.0f64, 1.0, 1.0];
        let b = [1.0f64, 1.0, 1.0];
        let mut out = [0.0f64; 1];
        matmul(&a, &b, 1, 3, 1, &mut out);
        assert_eq!(out[0], 3.0);
    }

    #[test]
    fn transposed_variants_agree_with_explicit_transpose() {
        let a = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [7.0f64, 8.0, 9.0, 10.0, 11.0, 12.0]; // 2x3
        // a^T (3x2) * b (2x3) -> 3x3
        let mut tn = vec![0.0; 9];
        matmul_tn(&a, &b, 2, 3, 3, &mut tn);
        let at = [1.0, 4.0, 2.0, 5.0, 3.0, 6.0];
        let mut expect = vec![0.0; 9];
        matmul(&at, &b, 3, 2, 3, &mut expect);
        assert_eq!(tn, expect);
        // a (2x3) * b^T (3x2) -> 2x2
        let mut nt = vec![0.0; 4];
        matmul_nt(&a, &b, 2, 3, 2, &mut nt);
        let bt = [7.0, 10.0, 8.0, 11.0, 9.0, 12.0];
        let mut expect2 = vec![0.0; 4];
        matmul(&a, &bt, 2, 3, 2, &mut expect2);
        assert_eq!(nt, expect2);
    }

    #[test]
    fn conv_geometry() {
        assert_eq!(conv_out_size(256, 16, 16, 0), Some(16));
        assert_eq!(conv_out_size(256, 16, 8, 4), Some(32));
        assert_eq!(conv_out_size(3, 5, 1, 0), None);
        assert_eq!(conv_transpose_out_size(16, 4, 2, 1), Some(32));
        assert_eq!(conv_transpose_out_size(12, 4, 2, 1), Some(24));
    }

    /// Direct-summation oracle for a 3x3 all-ones kernel on all-ones input.
    #[test]
    fn conv2d_ones_kernel_counts_taps() {
        let d = ConvDims {
            batch: 1,
            in_h: 3,
            in_w: 3,
            in_c: 1,
            k_h: 3,
            k_w: 3,
            out_c: 1,
            out_h: 3,
            out_w: 3,
            stride: 1,
            pad: 1,
        };
        let x = vec![1.0f64; 9];
        let w = vec![1.0f64; 9];
        let mut out = vec![0.0f64; 9];
        conv2d(&x, &w, &d, &mut out);
        assert_eq!(out[4], 9.0); // center sees the full kernel
        assert_eq!(out[0], 4.0); // corner sees a 2x2 overlap
        assert_eq!(out[1], 6.0); // edge sees a 2x3 overlap
    }

    /// Scatter-add oracle: a single input value spreads over the kernel taps
    /// that land inside the output.
    #[test]
    fn conv_transpose_scatters_single_value() {
        let d = ConvTDims {
            batch: 1,
            in_h: 1,
            in_w: 1,
            in_c: 1,
            k_h: 4,
            k_w: 4,
            out_c: 1,
            out_h: 2,
            out_w: 2,
            stride: 2,
            pad: 1,
        };
        let x = vec![3.0f64];
        let w = vec![1.0f64; 16];
        let mut out = vec![0.0f64; 4];
        conv_transpose2d(&x, &w, &d, &mut out);
        // taps with oh = i - 1 in [0, 2) and ow = j - 1 in [0, 2): i,j in {1,2}
        assert_eq!(out, vec![3.0; 4]);
        assert_eq!(out.iter().sum::<f64>(), 3.0 * 4.0);
    }

    #[test]
    fn bilinear_half_pixel_row() {
        // 1x2 row [0,1] at scale 2 -> [0, 0.25, 0.75, 1]
        let taps = bilinear_taps(4, 2, 2);
        let row = [0.0f64, 1.0];
        let out: Vec<f64> = taps
            .iter()
            .map(|&(i0, i1, f)| row[i0] * (1.0 - f) + row[i1] * f)
            .collect();
        let expect = [0.0, 0.25, 0.75, 1.0];
        for (a, b) in out.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12, "{out:?}");
        }
    }
}
