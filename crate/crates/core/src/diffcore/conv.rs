//! im2col-based convolution kernels used by the `conv2d` tape op.

use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    fn col_rows(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn col_cols(&self) -> usize {
        self.ho * self.wo
    }

    pub fn col_len(&self) -> usize {
        self.col_rows() * self.col_cols()
    }

    /// Output column range `[lo, hi)` whose input column `ox*stride + k - pad`
    /// falls inside `[0, extent)`.
    fn valid_range(&self, k: usize, extent: usize, out_extent: usize) -> (usize, usize) {
        let s = self.stride as isize;
        let offset = k as isize - self.padding as isize;
        // smallest o with o*s + offset >= 0
        let lo = if offset >= 0 { 0 } else { ((-offset) + s - 1) / s };
        // largest o with o*s + offset <= extent - 1
        let top = extent as isize - 1 - offset;
        let hi = if top < 0 { 0 } else { top / s + 1 };
        let lo = lo.clamp(0, out_extent as isize) as usize;
        let hi = hi.clamp(0, out_extent as isize) as usize;
        (lo, hi.max(lo))
    }
}

/// Appends the `[cin*kh*kw, ho*wo]` column matrix of one image to `cols`.
fn im2col<T: Scalar>(g: &ConvGeom, input: &[T], cols: &mut Vec<T>) {
    let s = g.stride;
    let zeros = |cols: &mut Vec<T>, n: usize| cols.extend(std::iter::repeat_n(T::zero(), n));
    for ci in 0..g.cin {
        let plane = &input[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.kh {
            let (ylo, yhi) = g.valid_range(ki, g.h, g.ho);
            for kj in 0..g.kw {
                let (xlo, xhi) = g.valid_range(kj, g.w, g.wo);
                zeros(cols, ylo * g.wo);
                for oy in ylo..yhi {
                    let iy = oy * s + ki - g.padding;
                    let src_row = &plane[iy * g.w..(iy + 1) * g.w];
                    zeros(cols, xlo);
                    if s == 1 {
                        let x0 = xlo + kj - g.padding;
                        cols.extend_from_slice(&src_row[x0..x0 + (xhi - xlo)]);
                    } else {
                        cols.extend((xlo..xhi).map(|ox| src_row[ox * s + kj - g.padding]));
                    }
                    zeros(cols, g.wo - xhi);
                }
                zeros(cols, (g.ho - yhi) * g.wo);
            }
        }
    }
}

fn col2im_add<T: Scalar>(g: &ConvGeom, cols: &[T], out: &mut [T]) {
    let n = g.col_cols();
    let s = g.stride;
    for ci in 0..g.cin {
        let plane = &mut out[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.kh {
            let (ylo, yhi) = g.valid_range(ki, g.h, g.ho);
            for kj in 0..g.kw {
                let (xlo, xhi) = g.valid_range(kj, g.w, g.wo);
                let row = (ci * g.kh + ki) * g.kw + kj;
                let src = &cols[row * n..(row + 1) * n];
                for oy in ylo..yhi {
                    let iy = oy * s + ki - g.padding;
                    let dst_row = &mut plane[iy * g.w..(iy + 1) * g.w];
                    let src_row = &src[oy * g.wo..(oy + 1) * g.wo];
                    if s == 1 {
                        let x0 = xlo + kj - g.padding;
                        for (d, v) in dst_row[x0..x0 + (xhi - xlo)].iter_mut().zip(&src_row[xlo..xhi]) {
                            *d += *v;
                        }
                    } else {
                        for ox in xlo..xhi {
                            dst_row[ox * s + kj - g.padding] += src_row[ox];
                        }
                    }
                }
            }
        }
    }
}

/// Returns the output and the per-batch im2col buffers (kept for backward).
pub(crate) fn forward<T: Scalar>(
    g: &ConvGeom,
    input: &[T],
    kernel: &[T],
    bias: &[T],
) -> (Vec<T>, Vec<T>) {
    let k = g.col_rows();
    let n = g.col_cols();
    let in_len = g.cin * g.h * g.w;
    let out_len = g.cout * n;
    let mut out = Vec::with_capacity(g.batch * out_len);
    for _ in 0..g.batch {
        for &b in &bias[..g.cout] {
            out.extend(std::iter::repeat_n(b, n));
        }
    }
    let mut cols = Vec::with_capacity(g.batch * g.col_len());
    for b in 0..g.batch {
        im2col(g, &input[b * in_len..(b + 1) * in_len], &mut cols);
        let col_b = &cols[b * k * n..(b + 1) * k * n];
        let out_b = &mut out[b * out_len..(b + 1) * out_len];
        T::gemm(
            g.cout,
            k,
            n,
            T::one(),
            (kernel, k as isize, 1),
            (col_b, n as isize, 1),
            T::one(),
            (out_b, n as isize, 1),
        );
    }
    (out, cols)
}

pub(crate) struct ConvGrads<T> {
    pub input: Option<Vec<T>>,
    pub kernel: Option<Vec<T>>,
    pub bias: Option<Vec<T>>,
}

pub(crate) fn backward<T: Scalar>(
    g: &ConvGeom,
    dout: &[T],
    cols: &[T],
    kernel: &[T],
    need: (bool, bool, bool),
) -> ConvGrads<T> {
    let k = g.col_rows();
    let n = g.col_cols();
    let in_len = g.cin * g.h * g.w;
    let out_len = g.cout * n;
    let mut d_input = need.0.then(|| vec![T::zero(); g.batch * in_len]);
    let mut d_kernel = need.1.then(|| vec![T::zero(); g.cout * k]);
    let mut d_bias = need.2.then(|| vec![T::zero(); g.cout]);
    let mut dcols = if need.0 { vec![T::zero(); k * n] } else { Vec::new() };
    for b in 0..g.batch {
        let dout_b = &dout[b * out_len..(b + 1) * out_len];
        let col_b = &cols[b * k * n..(b + 1) * k * n];
        if let Some(dk) = d_kernel.as_mut() {
            // dK[cout, k] += dOut[cout, n] * cols^T[n, k]
            T::gemm(
                g.cout,
                n,
                k,
                T::one(),
                (dout_b, n as isize, 1),
                (col_b, 1, n as isize),
                T::one(),
                (dk, k as isize, 1),
            );
        }
        if let Some(db) = d_bias.as_mut() {
            for (co, row) in dout_b.chunks_exact(n).enumerate() {
                db[co] += row.iter().copied().sum::<T>();
            }
        }
        if let Some(di) = d_input.as_mut() {
            // dCols[k, n] = K^T[k, cout] * dOut[cout, n]
            T::gemm(
                k,
                g.cout,
                n,
                T::one(),
                (kernel, 1, k as isize),
                (dout_b, n as isize, 1),
                T::zero(),
                (&mut dcols, n as isize, 1),
            );
            col2im_add(g, &dcols, &mut di[b * in_len..(b + 1) * in_len]);
        }
    }
    ConvGrads {
        input: d_input,
        kernel: d_kernel,
        bias: d_bias,
    }
}
