//! 2-D convolution (cross-correlation) and its transpose, via im2col + GEMM.

use super::{MatRef, Real, Tensor, gemm};
use crate::error::{Error, Result};

/// Gradients of a convolution-like layer.
#[derive(Clone, Debug)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Spatial output extent of a convolution: `⌊(size + 2·padding − k) / stride⌋ + 1`.
pub fn conv2d_output_size(size: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    if stride == 0 || size + 2 * padding < kernel {
        return None;
    }
    Some((size + 2 * padding - kernel) / stride + 1)
}

/// Spatial output extent of a transposed convolution:
/// `(size − 1)·stride − 2·padding + k + output_padding`.
pub fn conv_transpose2d_output_size(
    size: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    output_padding: usize,
) -> Option<usize> {
    if stride == 0 || size == 0 || output_padding >= stride {
        return None;
    }
    ((size - 1) * stride + kernel + output_padding).checked_sub(2 * padding).filter(|&s| s > 0)
}

#[derive(Clone, Copy)]
struct Geometry {
    channels: usize,
    height: usize,
    width: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    out_h: usize,
    out_w: usize,
}

impl Geometry {
    fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Unfold a `C×H×W` image into a `(C·k·k) × (OH·OW)` patch matrix.
fn im2col<T: Real>(image: &[T], g: Geometry, col: &mut [T]) {
    let cols = g.col_cols();
    let mut row = 0;
    for c in 0..g.channels {
        let plane = &image[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let dst = &mut col[row * cols..(row + 1) * cols];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= g.height as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        *v = if ix < 0 || ix >= g.width as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add patches back into a `C×H×W` image.
fn col2im<T: Real>(col: &[T], g: Geometry, image: &mut [T]) {
    let cols = g.col_cols();
    let mut row = 0;
    for c in 0..g.channels {
        let plane = &mut image[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let src = &col[row * cols..(row + 1) * cols];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        if ix >= 0 && ix < g.width as isize {
                            dst[ix as usize] += src[oy * g.out_w + ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

fn square_kernel<T: Real>(weight: &Tensor<T>, op: &'static str) -> Result<[usize; 4]> {
    let dims = weight.dims4(op)?;
    if dims[2] != dims[3] {
        return Err(Error::ShapeMismatch {
            op,
            dim: "kernel width",
            expected: dims[2],
            found: dims[3],
        });
    }
    if dims[2] == 0 {
        return Err(Error::invalid(op, "kernel size must be at least 1"));
    }
    Ok(dims)
}

fn check_bias<T: Real>(bias: Option<&Tensor<T>>, channels: usize, op: &'static str) -> Result<()> {
    if let Some(b) = bias {
        if b.len() != channels {
            return Err(Error::ShapeMismatch {
                op,
                dim: "bias",
                expected: channels,
                found: b.len(),
            });
        }
    }
    Ok(())
}

fn add_bias<T: Real>(out: &mut Tensor<T>, bias: Option<&Tensor<T>>) {
    let Some(bias) = bias else { return };
    let [n, c, _, _] = out.dims4("bias").expect("rank-4 output");
    for ni in 0..n {
        for (ci, &b) in bias.data().iter().enumerate().take(c) {
            out.plane_mut(ni, ci).iter_mut().for_each(|v| *v += b);
        }
    }
}

fn bias_grad<T: Real>(grad_out: &Tensor<T>) -> Tensor<T> {
    let [n, c, _, _] = grad_out.dims4("bias").expect("rank-4 gradient");
    let mut g = Tensor::zeros([c]);
    for ni in 0..n {
        for ci in 0..c {
            g.data_mut()[ci] += grad_out.plane(ni, ci).iter().copied().sum::<T>();
        }
    }
    g
}

fn stride_check(stride: usize, op: &'static str) -> Result<()> {
    if stride == 0 {
        return Err(Error::invalid(op, "stride must be at least 1"));
    }
    Ok(())
}

/// Cross-correlation of `N×Cin×H×W` input with a `Cout×Cin×k×k` kernel.
pub fn conv2d_forward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    const OP: &str = "conv2d";
    stride_check(stride, OP)?;
    let [n, cin, h, w] = input.dims4(OP)?;
    let [cout, wcin, k, _] = square_kernel(weight, OP)?;
    if wcin != cin {
        return Err(Error::ShapeMismatch {
            op: OP,
            dim: "input channels",
            expected: wcin,
            found: cin,
        });
    }
    check_bias(bias, cout, OP)?;
    let (out_h, out_w) = match (
        conv2d_output_size(h, k, stride, padding),
        conv2d_output_size(w, k, stride, padding),
    ) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::invalid(OP, format!("{h}x{w} input is smaller than the {k}x{k} kernel"))),
    };
    let g = Geometry {
        channels: cin,
        height: h,
        width: w,
        kernel: k,
        stride,
        padding,
        out_h,
        out_w,
    };
    let mut out = Tensor::zeros([n, cout, out_h, out_w]);
    let mut col = vec![T::zero(); g.col_rows() * g.col_cols()];
    let wmat = MatRef::row_major(weight.data(), cout, g.col_rows());
    let in_len = cin * h * w;
    let out_len = cout * out_h * out_w;
    for ni in 0..n {
        im2col(&input.data()[ni * in_len..(ni + 1) * in_len], g, &mut col);
        gemm(
            wmat,
            MatRef::row_major(&col, g.col_rows(), g.col_cols()),
            &mut out.data_mut()[ni * out_len..(ni + 1) * out_len],
            T::zero(),
        );
    }
    add_bias(&mut out, bias);
    Ok(out)
}

/// Gradients of [`conv2d_forward`] with respect to input, weight and bias.
pub fn conv2d_backward<T: Real>(
    grad_out: &Tensor<T>,
    saved_input: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<ConvGrads<T>> {
    const OP: &str = "conv2d_backward";
    stride_check(stride, OP)?;
    let [n, cin, h, w] = saved_input.dims4(OP)?;
    let [cout, wcin, k, _] = square_kernel(weight, OP)?;
    if wcin != cin {
        return Err(Error::ShapeMismatch {
            op: OP,
            dim: "input channels",
            expected: wcin,
            found: cin,
        });
    }
    let out_h = conv2d_output_size(h, k, stride, padding)
        .ok_or_else(|| Error::invalid(OP, "input smaller than kernel"))?;
    let out_w = conv2d_output_size(w, k, stride, padding)
        .ok_or_else(|| Error::invalid(OP, "input smaller than kernel"))?;
    grad_out.ensure_shape(OP, &[n, cout, out_h, out_w])?;
    let g = Geometry {
        channels: cin,
        height: h,
        width: w,
        kernel: k,
        stride,
        padding,
        out_h,
        out_w,
    };
    let mut grad_input = Tensor::zeros([n, cin, h, w]);
    let mut grad_weight = Tensor::zeros([cout, cin, k, k]);
    let mut col = vec![T::zero(); g.col_rows() * g.col_cols()];
    let mut grad_col = vec![T::zero(); g.col_rows() * g.col_cols()];
    let wmat = MatRef::row_major(weight.data(), cout, g.col_rows());
    let in_len = cin * h * w;
    let out_len = cout * out_h * out_w;
    for ni in 0..n {
        let gout = MatRef::row_major(&grad_out.data()[ni * out_len..(ni + 1) * out_len], cout, g.col_cols());
        im2col(&saved_input.data()[ni * in_len..(ni + 1) * in_len], g, &mut col);
        gemm(
            gout,
            MatRef::row_major(&col, g.col_rows(), g.col_cols()).t(),
            grad_weight.data_mut(),
            T::one(),
        );
        gemm(wmat.t(), gout, &mut grad_col, T::zero());
        col2im(&grad_col, g, &mut grad_input.data_mut()[ni * in_len..(ni + 1) * in_len]);
    }
    Ok(ConvGrads {
        input: grad_input,
        weight: grad_weight,
        bias: bias_grad(grad_out),
    })
}

/// Transposed convolution of `N×Cin×H×W` input with a `Cin×Cout×k×k` kernel.
///
/// This is the adjoint of [`conv2d_forward`] for the same kernel, stride and
/// padding; `output_padding` (< stride) selects among the output sizes that
/// the forward convolution maps back onto `H×W`.
pub fn conv_transpose2d_forward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: usize,
    output_padding: usize,
) -> Result<Tensor<T>> {
    const OP: &str = "conv_transpose2d";
    stride_check(stride, OP)?;
    let [n, cin, h, w] = input.dims4(OP)?;
    let [wcin, cout, k, _] = square_kernel(weight, OP)?;
    if wcin != cin {
        return Err(Error::ShapeMismatch {
            op: OP,
            dim: "input channels",
            expected: wcin,
            found: cin,
        });
    }
    check_bias(bias, cout, OP)?;
    let size = |s| conv_transpose2d_output_size(s, k, stride, padding, output_padding);
    let (out_h, out_w) = match (size(h), size(w)) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::invalid(
                OP,
                format!("no valid output for {h}x{w} input, stride {stride}, padding {padding}, output padding {output_padding}"),
            ));
        }
    };
    // The patch geometry is that of the forward convolution from out_h×out_w to h×w.
    let g = Geometry {
        channels: cout,
        height: out_h,
        width: out_w,
        kernel: k,
        stride,
        padding,
        out_h: h,
        out_w: w,
    };
    let mut out = Tensor::zeros([n, cout, out_h, out_w]);
    let mut col = vec![T::zero(); g.col_rows() * g.col_cols()];
    let wmat = MatRef::row_major(weight.data(), cin, g.col_rows());
    let in_len = cin * h * w;
    let out_len = cout * out_h * out_w;
    for ni in 0..n {
        let x = MatRef::row_major(&input.data()[ni * in_len..(ni + 1) * in_len], cin, h * w);
        gemm(wmat.t(), x, &mut col, T::zero());
        col2im(&col, g, &mut out.data_mut()[ni * out_len..(ni + 1) * out_len]);
    }
    add_bias(&mut out, bias);
    Ok(out)
}

/// Gradients of [`conv_transpose2d_forward`].
pub fn conv_transpose2d_backward<T: Real>(
    grad_out: &Tensor<T>,
    saved_input: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<ConvGrads<T>> {
    const OP: &str = "conv_transpose2d_backward";
    stride_check(stride, OP)?;
    let [n, cin, h, w] = saved_input.dims4(OP)?;
    let [wcin, cout, k, _] = square_kernel(weight, OP)?;
    if wcin != cin {
        return Err(Error::ShapeMismatch {
            op: OP,
            dim: "input channels",
            expected: wcin,
            found: cin,
        });
    }
    let [gn, gc, out_h, out_w] = grad_out.dims4(OP)?;
    if gn != n {
        return Err(Error::ShapeMismatch { op: OP, dim: "batch", expected: n, found: gn });
    }
    if gc != cout {
        return Err(Error::ShapeMismatch { op: OP, dim: "channels", expected: cout, found: gc });
    }
    if conv2d_output_size(out_h, k, stride, padding) != Some(h) {
        return Err(Error::ShapeMismatch { op: OP, dim: "height", expected: h, found: out_h });
    }
    if conv2d_output_size(out_w, k, stride, padding) != Some(w) {
        return Err(Error::ShapeMismatch { op: OP, dim: "width", expected: w, found: out_w });
    }
    let g = Geometry {
        channels: cout,
        height: out_h,
        width: out_w,
        kernel: k,
        stride,
        padding,
        out_h: h,
        out_w: w,
    };
    let mut grad_input = Tensor::zeros([n, cin, h, w]);
    let mut grad_weight = Tensor::zeros([cin, cout, k, k]);
    let mut col = vec![T::zero(); g.col_rows() * g.col_cols()];
    let wmat = MatRef::row_major(weight.data(), cin, g.col_rows());
    let in_len = cin * h * w;
    let out_len = cout * out_h * out_w;
    for ni in 0..n {
        im2col(&grad_out.data()[ni * out_len..(ni + 1) * out_len], g, &mut col);
        let colm = MatRef::row_major(&col, g.col_rows(), g.col_cols());
        gemm(wmat, colm, &mut grad_input.data_mut()[ni * in_len..(ni + 1) * in_len], T::zero());
        let x = MatRef::row_major(&saved_input.data()[ni * in_len..(ni + 1) * in_len], cin, h * w);
        gemm(x, colm.t(), grad_weight.data_mut(), T::one());
    }
    Ok(ConvGrads {
        input: grad_input,
        weight: grad_weight,
        bias: bias_grad(grad_out),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: [usize; 4], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn identity_kernel_preserves_input() {
        let x = Tensor::<f64>::full([1, 1, 3, 3], 1.0);
        let y = conv2d_forward(&x, &t([1, 1, 1, 1], &[1.0]), Some(&Tensor::zeros([1])), 1, 0).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn diagonal_kernel_sums_diagonal() {
        let x = t([1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let wt = t([1, 1, 2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let y = conv2d_forward(&x, &wt, Some(&Tensor::zeros([1])), 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.data(), &[5.0]);
    }

    #[test]
    fn zero_kernel_yields_bias() {
        let x = Tensor::from_fn([2, 3, 5, 4], |i| i as f64 * 0.3 - 2.0);
        let bias = t([1, 1, 1, 2], &[0.25, -1.5]);
        let bias = Tensor::new([2], bias.into_data()).unwrap();
        let y = conv2d_forward(&x, &Tensor::zeros([2, 3, 3, 3]), Some(&bias), 2, 1).unwrap();
        assert_eq!(y.shape(), &[2, 2, 3, 2]);
        for n in 0..2 {
            assert!(y.plane(n, 0).iter().all(|&v| v == 0.25));
            assert!(y.plane(n, 1).iter().all(|&v| v == -1.5));
        }
    }

    #[test]
    fn output_size_formula() {
        assert_eq!(conv2d_output_size(96, 9, 2, 4), Some(48));
        assert_eq!(conv2d_output_size(7, 3, 2, 1), Some(4));
        assert_eq!(conv2d_output_size(2, 5, 1, 1), None);
        assert_eq!(conv_transpose2d_output_size(12, 3, 2, 1, 1), Some(24));
        assert_eq!(conv_transpose2d_output_size(12, 3, 2, 1, 2), None);
    }

    #[test]
    fn channel_mismatch_is_named() {
        let x = Tensor::<f64>::zeros([1, 2, 4, 4]);
        let err = conv2d_forward(&x, &Tensor::zeros([1, 3, 3, 3]), None, 1, 1).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { dim: "input channels", expected: 3, found: 2, .. }));
        let err = conv2d_forward(&x, &Tensor::zeros([1, 2, 3, 3]), Some(&Tensor::zeros([4])), 1, 1).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { dim: "bias", .. }));
        let err = conv2d_forward(&x, &Tensor::zeros([1, 2, 3, 2]), None, 1, 1).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { dim: "kernel width", .. }));
    }

    #[test]
    fn backward_of_zero_gradient_is_zero() {
        let x = Tensor::from_fn([1, 2, 5, 5], |i| (i as f64).sin());
        let wt = Tensor::from_fn([3, 2, 3, 3], |i| (i as f64).cos());
        let g = conv2d_backward(&Tensor::zeros([1, 3, 5, 5]), &x, &wt, 1, 1).unwrap();
        assert!(g.input.data().iter().all(|&v| v == 0.0));
        assert!(g.weight.data().iter().all(|&v| v == 0.0));
        assert!(g.bias.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_window_weight_gradient_is_input() {
        let x = t([1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let wt = t([1, 1, 2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let g = conv2d_backward(&t([1, 1, 1, 1], &[1.0]), &x, &wt, 1, 0).unwrap();
        assert_eq!(g.weight.data(), x.data());
        assert_eq!(g.input.data(), wt.data());
        assert_eq!(g.bias.data(), &[1.0]);
    }

    #[test]
    fn backward_rejects_wrong_grad_shape() {
        let x = Tensor::<f64>::zeros([1, 1, 4, 4]);
        let wt = Tensor::<f64>::zeros([2, 1, 3, 3]);
        let err = conv2d_backward(&Tensor::zeros([1, 2, 3, 4]), &x, &wt, 1, 1).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { dim: "height", expected: 4, found: 3, .. }));
    }

    #[test]
    fn transpose_identity_and_scatter() {
        let x = Tensor::from_fn([1, 1, 3, 3], |i| i as f64);
        let y = conv_transpose2d_forward(&x, &t([1, 1, 1, 1], &[1.0]), None, 1, 0, 0).unwrap();
        assert_eq!(y, x);

        let y = conv_transpose2d_forward(
            &t([1, 1, 1, 1], &[2.0]),
            &t([1, 1, 2, 2], &[1.0, 1.0, 1.0, 1.0]),
            Some(&Tensor::zeros([1])),
            2,
            0,
            0,
        )
        .unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert_eq!(y.data(), &[2.0; 4]);
    }
}
