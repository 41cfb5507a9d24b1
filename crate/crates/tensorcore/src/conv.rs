//! Convolution kernels (im2col + GEMM) shared by the graph ops.

use crate::error::{shape_err, Result, TensorError};
use crate::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    /// Geometry of a forward convolution over a `c×h×w` input.
    pub fn forward(
        c: usize,
        h: usize,
        w: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        if stride == 0 {
            return Err(TensorError::Config("stride must be >= 1".into()));
        }
        let out = |size: usize, k: usize, axis: &str| -> Result<usize> {
            let padded = size + 2 * pad;
            if padded < k {
                return shape_err(format!(
                    "kernel {k} larger than padded {axis} extent {padded}"
                ));
            }
            if (padded - k) % stride != 0 {
                return Err(TensorError::Config(format!(
                    "{axis}: ({size} + 2*{pad} - {k}) not divisible by stride {stride}"
                )));
            }
            Ok((padded - k) / stride + 1)
        };
        Ok(Self {
            in_c: c,
            in_h: h,
            in_w: w,
            kh,
            kw,
            stride,
            pad,
            out_h: out(h, kh, "height")?,
            out_w: out(w, kw, "width")?,
        })
    }

    fn patch_len(&self) -> usize {
        self.in_c * self.kh * self.kw
    }

    fn out_len(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Unfold one `C×H×W` image into a `(C·kh·kw) × (Ho·Wo)` column matrix.
pub fn im2col<T: Scalar>(x: &[T], g: &ConvGeom, cols: &mut [T]) {
    let ol = g.out_len();
    debug_assert_eq!(cols.len(), g.patch_len() * ol);
    let pad = g.pad as isize;
    for c in 0..g.in_c {
        let plane = &x[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * ol..(row + 1) * ol];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ki) as isize - pad;
                    let drow = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= g.in_h as isize {
                        drow.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    for (ox, d) in drow.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - pad;
                        *d = if ix < 0 || ix >= g.in_w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add columns back into a `C×H×W` image.
pub fn col2im<T: Scalar>(cols: &[T], g: &ConvGeom, x: &mut [T]) {
    let ol = g.out_len();
    let pad = g.pad as isize;
    for c in 0..g.in_c {
        let plane = &mut x[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &cols[row * ol..(row + 1) * ol];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ki) as isize - pad;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kj) as isize - pad;
                        if ix >= 0 && ix < g.in_w as isize {
                            dst[ix as usize] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

fn kernel_dims<T: Scalar>(kernel: &Tensor<T>) -> Result<(usize, usize, usize, usize)> {
    kernel
        .dims4()
        .map_err(|_| TensorError::Shape(format!("kernel must be 4-D, got {:?}", kernel.shape())))
}

/// Forward convolution. `kernel` is `O×I×Kh×Kw`.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let (n, c, h, w) = input.dims4()?;
    let (o, i, kh, kw) = kernel_dims(kernel)?;
    if c != i {
        return shape_err(format!(
            "conv2d: input has {c} channels but kernel expects {i}"
        ));
    }
    let g = ConvGeom::forward(c, h, w, kh, kw, stride, pad)?;
    let (pl, ol) = (g.patch_len(), g.out_len());
    let mut out = vec![T::zero(); n * o * ol];
    let mut cols = vec![T::zero(); pl * ol];
    let in_len = c * h * w;
    for b in 0..n {
        im2col(&input.data()[b * in_len..(b + 1) * in_len], &g, &mut cols);
        T::gemm(
            o,
            pl,
            ol,
            T::one(),
            kernel.data(),
            (pl, 1),
            &cols,
            (ol, 1),
            T::zero(),
            &mut out[b * o * ol..(b + 1) * o * ol],
            ol,
        );
    }
    Tensor::new(vec![n, o, g.out_h, g.out_w], out)
}

/// Gradients of [`conv2d`] w.r.t. input and kernel given the output gradient.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    pad: usize,
    want_input: bool,
    want_kernel: bool,
) -> Result<(Option<Tensor<T>>, Option<Tensor<T>>)> {
    let (n, c, h, w) = input.dims4()?;
    let (o, _, kh, kw) = kernel_dims(kernel)?;
    let g = ConvGeom::forward(c, h, w, kh, kw, stride, pad)?;
    let (pl, ol) = (g.patch_len(), g.out_len());
    let in_len = c * h * w;
    let mut cols = vec![T::zero(); pl * ol];
    let mut dx = want_input.then(|| vec![T::zero(); n * in_len]);
    let mut dk = want_kernel.then(|| vec![T::zero(); kernel.len()]);
    for b in 0..n {
        let go = &grad_out.data()[b * o * ol..(b + 1) * o * ol];
        if let Some(dk) = dk.as_mut() {
            im2col(&input.data()[b * in_len..(b + 1) * in_len], &g, &mut cols);
            // dK[o, p] += Σ_l gout[o, l] · cols[p, l]
            T::gemm(o, ol, pl, T::one(), go, (ol, 1), &cols, (1, ol), T::one(), dk, pl);
        }
        if let Some(dx) = dx.as_mut() {
            // dcols[p, l] = Σ_o K[o, p] · gout[o, l]
            T::gemm(pl, o, ol, T::one(), kernel.data(), (1, pl), go, (ol, 1), T::zero(), &mut cols, ol);
            col2im(&cols, &g, &mut dx[b * in_len..(b + 1) * in_len]);
        }
    }
    Ok((
        dx.map(|d| Tensor::new(input.shape().to_vec(), d)).transpose()?,
        dk.map(|d| Tensor::new(kernel.shape().to_vec(), d)).transpose()?,
    ))
}

/// Geometry of the convolution whose adjoint maps `input` (`N×Cin×H×W`)
/// through `kernel` (`Cin×Cout×Kh×Kw`).
fn transpose_geom<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<(usize, usize, ConvGeom)> {
    let (n, c, h, w) = input.dims4()?;
    let (ki, ko, kh, kw) = kernel_dims(kernel)?;
    if c != ki {
        return shape_err(format!(
            "conv2d_transpose: input has {c} channels but kernel expects {ki}"
        ));
    }
    if stride == 0 {
        return Err(TensorError::Config("stride must be >= 1".into()));
    }
    let span = |size: usize, k: usize| ((size - 1) * stride + k).checked_sub(2 * pad);
    let (oh, ow) = match (span(h, kh), span(w, kw)) {
        (Some(a), Some(b)) if a > 0 && b > 0 => (a, b),
        _ => return shape_err("conv2d_transpose: padding exceeds output extent"),
    };
    let g = ConvGeom::forward(ko, oh, ow, kh, kw, stride, pad)?;
    debug_assert_eq!((g.out_h, g.out_w), (h, w));
    Ok((n, ki, g))
}

/// Transposed convolution: the exact adjoint of [`conv2d`] with the same
/// kernel viewed as `Cin×Cout×Kh×Kw`.
pub fn conv2d_transpose<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let (n, cin, g) = transpose_geom(input, kernel, stride, pad)?;
    let (pl, ol) = (g.patch_len(), g.out_len());
    let out_len = g.in_c * g.in_h * g.in_w;
    let mut out = vec![T::zero(); n * out_len];
    let mut cols = vec![T::zero(); pl * ol];
    for b in 0..n {
        let x = &input.data()[b * cin * ol..(b + 1) * cin * ol];
        // cols[p, l] = Σ_c K[c, p] · x[c, l]
        T::gemm(pl, cin, ol, T::one(), kernel.data(), (1, pl), x, (ol, 1), T::zero(), &mut cols, ol);
        col2im(&cols, &g, &mut out[b * out_len..(b + 1) * out_len]);
    }
    Tensor::new(vec![n, g.in_c, g.in_h, g.in_w], out)
}

pub fn conv2d_transpose_backward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    pad: usize,
    want_input: bool,
    want_kernel: bool,
) -> Result<(Option<Tensor<T>>, Option<Tensor<T>>)> {
    let (n, cin, g) = transpose_geom(input, kernel, stride, pad)?;
    let (pl, ol) = (g.patch_len(), g.out_len());
    let out_len = g.in_c * g.in_h * g.in_w;
    let mut cols = vec![T::zero(); pl * ol];
    let mut dx = want_input.then(|| vec![T::zero(); input.len()]);
    let mut dk = want_kernel.then(|| vec![T::zero(); kernel.len()]);
    for b in 0..n {
        im2col(&grad_out.data()[b * out_len..(b + 1) * out_len], &g, &mut cols);
        if let Some(dx) = dx.as_mut() {
            T::gemm(cin, pl, ol, T::one(), kernel.data(), (pl, 1), &cols, (ol, 1), T::zero(), &mut dx[b * cin * ol..(b + 1) * cin * ol], ol);
        }
        if let Some(dk) = dk.as_mut() {
            let x = &input.data()[b * cin * ol..(b + 1) * cin * ol];
            T::gemm(cin, ol, pl, T::one(), x, (ol, 1), &cols, (1, ol), T::one(), dk, pl);
        }
    }
    Ok((
        dx.map(|d| Tensor::new(input.shape().to_vec(), d)).transpose()?,
        dk.map(|d| Tensor::new(kernel.shape().to_vec(), d)).transpose()?,
    ))
}
