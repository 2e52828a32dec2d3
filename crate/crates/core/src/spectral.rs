//! 2-D discrete Fourier transforms with centered-spectrum layouts,
//! real-input half-spectrum transforms, and centered band truncation.
//!
//! Conventions, fixed repo-wide: the forward DFT is unnormalized,
//! X(xi) = sum_x x(x) exp(-2 pi i <xi, x> / n); the inverse carries the
//! full 1/(n_x n_y) factor. The centered layout places frequency zero at
//! index (floor(n_x/2), floor(n_y/2)). Transforms apply to the last two
//! axes; leading axes are batch.
//!
//! The FFT is radix-2 with an O(n^2) direct fallback for other lengths;
//! desk-scale grids make correctness the only requirement, and the direct
//! path doubles as an oracle in the tests.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use num_complex::Complex64 as C;

use crate::error::{Error, Result};
use crate::tensor::{numel_of, Dtype, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    Standard,
    Centered,
}

struct FftPlan {
    n: usize,
    /// Bit-reversal permutation (radix-2 only).
    bitrev: Vec<usize>,
    /// e^(-2 pi i k / n) for k in 0..n/2 (radix-2 only).
    twiddle: Vec<C>,
    /// e^(-2 pi i m / n) for m in 0..n (direct path only).
    roots: Vec<C>,
}

impl FftPlan {
    fn new(n: usize) -> FftPlan {
        let pow2 = n.is_power_of_two();
        let mut bitrev = Vec::new();
        let mut twiddle = Vec::new();
        let mut roots = Vec::new();
        if pow2 && n > 1 {
            let bits = n.trailing_zeros();
            bitrev = (0..n)
                .map(|i| i.reverse_bits() >> (usize::BITS - bits))
                .collect();
            twiddle = (0..n / 2)
                .map(|k| {
                    let a = -2.0 * std::f64::consts::PI * k as f64 / n as f64;
                    C::new(a.cos(), a.sin())
                })
                .collect();
        } else {
            roots = (0..n)
                .map(|m| {
                    let a = -2.0 * std::f64::consts::PI * m as f64 / n as f64;
                    C::new(a.cos(), a.sin())
                })
                .collect();
        }
        FftPlan {
            n,
            bitrev,
            twiddle,
            roots,
        }
    }

    fn forward(&self, buf: &mut [C], scratch: &mut Vec<C>) {
        self.transform(buf, scratch, false)
    }

    /// Unnormalized inverse (conjugate transform); callers divide by n.
    fn backward(&self, buf: &mut [C], scratch: &mut Vec<C>) {
        self.transform(buf, scratch, true)
    }

    fn transform(&self, buf: &mut [C], scratch: &mut Vec<C>, inverse: bool) {
        let n = self.n;
        debug_assert_eq!(buf.len(), n);
        if n <= 1 {
            return;
        }
        if n.is_power_of_two() {
            for (i, &r) in self.bitrev.iter().enumerate() {
                if i < r {
                    buf.swap(i, r);
                }
            }
            let mut len = 2;
            while len <= n {
                let half = len / 2;
                let step = n / len;
                let mut start = 0;
                while start < n {
                    for k in 0..half {
                        let mut w = self.twiddle[k * step];
                        if inverse {
                            w = w.conj();
                        }
                        let a = buf[start + k];
                        let b = buf[start + k + half] * w;
                        buf[start + k] = a + b;
                        buf[start + k + half] = a - b;
                    }
                    start += len;
                }
                len *= 2;
            }
        } else {
            scratch.clear();
            scratch.resize(n, C::new(0.0, 0.0));
            for k in 0..n {
                let mut acc = C::new(0.0, 0.0);
                for j in 0..n {
                    let mut w = self.roots[(j * k) % n];
                    if inverse {
                        w = w.conj();
                    }
                    acc += buf[j] * w;
                }
                scratch[k] = acc;
            }
            buf.copy_from_slice(scratch);
        }
    }
}

thread_local! {
    static PLANS: RefCell<HashMap<usize, Rc<FftPlan>>> = RefCell::new(HashMap::new());
}

fn plan(n: usize) -> Rc<FftPlan> {
    PLANS.with(|cache| {
        cache
            .borrow_mut()
            .entry(n)
            .or_insert_with(|| Rc::new(FftPlan::new(n)))
            .clone()
    })
}

fn last2(shape: &[usize]) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 {
        return Err(Error::invalid(format!(
            "expected at least 2 spatial axes, got shape {shape:?}"
        )));
    }
    let n0 = shape[shape.len() - 2];
    let n1 = shape[shape.len() - 1];
    let batch = numel_of(&shape[..shape.len() - 2]);
    Ok((batch, n0, n1))
}

/// In-place unnormalized 2-D transform of one (n0, n1) complex slab;
/// shared with the PDE solver's inner loop.
pub(crate) fn fft2_raw(buf: &mut [C], n0: usize, n1: usize, inverse: bool) {
    fft2_slab(buf, n0, n1, inverse)
}

/// In-place 2-D transform of one (n0, n1) complex slab.
fn fft2_slab(buf: &mut [C], n0: usize, n1: usize, inverse: bool) {
    let row_plan = plan(n1);
    let col_plan = plan(n0);
    let mut scratch = Vec::new();
    for r in 0..n0 {
        let row = &mut buf[r * n1..(r + 1) * n1];
        if inverse {
            row_plan.backward(row, &mut scratch);
        } else {
            row_plan.forward(row, &mut scratch);
        }
    }
    let mut col = vec![C::new(0.0, 0.0); n0];
    for c in 0..n1 {
        for r in 0..n0 {
            col[r] = buf[r * n1 + c];
        }
        if inverse {
            col_plan.backward(&mut col, &mut scratch);
        } else {
            col_plan.forward(&mut col, &mut scratch);
        }
        for r in 0..n0 {
            buf[r * n1 + c] = col[r];
        }
    }
}

fn map_slabs(x: &Tensor, mut f: impl FnMut(&mut [C], usize, usize)) -> Tensor {
    let (batch, n0, n1) = last2(x.shape()).expect("checked by caller");
    let mut vals = x.to_complex_vec();
    for b in 0..batch {
        f(&mut vals[b * n0 * n1..(b + 1) * n0 * n1], n0, n1);
    }
    Tensor::from_complex(x.shape(), vals)
}

/// Unnormalized forward 2-D DFT of the last two axes.
pub fn dft2(x: &Tensor, layout: Layout) -> Result<Tensor> {
    last2(x.shape())?;
    let out = map_slabs(x, |slab, n0, n1| fft2_slab(slab, n0, n1, false));
    Ok(match layout {
        Layout::Standard => out,
        Layout::Centered => fftshift2(&out)?,
    })
}

/// Inverse 2-D DFT; carries the full 1/(n0*n1) normalization.
pub fn idft2(x: &Tensor, layout: Layout) -> Result<Tensor> {
    let (_, n0, n1) = last2(x.shape())?;
    let shifted;
    let input = match layout {
        Layout::Standard => x,
        Layout::Centered => {
            shifted = ifftshift2(x)?;
            &shifted
        }
    };
    let scale = 1.0 / (n0 * n1) as f64;
    let mut out = map_slabs(input, |slab, m0, m1| fft2_slab(slab, m0, m1, true));
    for v in out.data_mut() {
        *v *= scale;
    }
    Ok(out)
}

/// Adjoint of the unnormalized forward DFT: the unnormalized conjugate
/// transform (equals n0*n1 times the inverse).
pub fn dft2_adjoint(g: &Tensor) -> Result<Tensor> {
    last2(g.shape())?;
    Ok(map_slabs(g, |slab, n0, n1| fft2_slab(slab, n0, n1, true)))
}

/// Adjoint of the normalized inverse DFT: forward transform over n0*n1.
pub fn idft2_adjoint(g: &Tensor) -> Result<Tensor> {
    let (_, n0, n1) = last2(g.shape())?;
    let scale = 1.0 / (n0 * n1) as f64;
    let mut out = map_slabs(g, |slab, m0, m1| fft2_slab(slab, m0, m1, false));
    for v in out.data_mut() {
        *v *= scale;
    }
    Ok(out)
}

fn shift2(x: &Tensor, forward: bool) -> Result<Tensor> {
    let (batch, n0, n1) = last2(x.shape())?;
    let lanes = x.dtype().lanes();
    let mut out = Tensor::zeros(x.dtype(), x.shape());
    let (s0, s1) = if forward {
        // fftshift: out[i] = in[(i + ceil(n/2)) mod n], putting 0 at floor(n/2).
        (n0 - n0 / 2, n1 - n1 / 2)
    } else {
        (n0 / 2, n1 / 2)
    };
    let src = x.data();
    let dst = out.data_mut();
    for b in 0..batch {
        let base = b * n0 * n1;
        for i in 0..n0 {
            let si = (i + s0) % n0;
            for j in 0..n1 {
                let sj = (j + s1) % n1;
                let d = (base + i * n1 + j) * lanes;
                let s = (base + si * n1 + sj) * lanes;
                dst[d..d + lanes].copy_from_slice(&src[s..s + lanes]);
            }
        }
    }
    Ok(out)
}

/// Periodic shift placing frequency zero at (floor(n0/2), floor(n1/2)).
pub fn fftshift2(x: &Tensor) -> Result<Tensor> {
    shift2(x, true)
}

pub fn ifftshift2(x: &Tensor) -> Result<Tensor> {
    shift2(x, false)
}

/// Number of columns kept by the real transform.
pub fn half_cols(n: usize) -> usize {
    n / 2 + 1
}

/// Real-input forward transform storing only the non-negative frequencies
/// of the last axis: output shape (..., n0, n1/2 + 1), standard layout.
pub fn rdft2(x: &Tensor) -> Result<Tensor> {
    if !x.is_real() {
        return Err(Error::DtypeMismatch {
            op: "rdft2",
            expected: "real64",
            got: x.dtype().name(),
        });
    }
    let (batch, n0, n1) = last2(x.shape())?;
    let h = half_cols(n1);
    let mut out_shape = x.shape().to_vec();
    let rank = out_shape.len();
    out_shape[rank - 1] = h;
    let mut out = Tensor::zeros(Dtype::Complex, &out_shape);

    let row_plan = plan(n1);
    let col_plan = plan(n0);
    let mut scratch = Vec::new();
    let mut za = vec![C::new(0.0, 0.0); n1];
    let mut col = vec![C::new(0.0, 0.0); n0];
    let src = x.data();

    for b in 0..batch {
        let in_base = b * n0 * n1;
        let out_base = b * n0 * h;
        // Row transforms two real rows at a time via one complex FFT.
        let mut r = 0;
        while r + 1 < n0 {
            let row0 = &src[in_base + r * n1..in_base + (r + 1) * n1];
            let row1 = &src[in_base + (r + 1) * n1..in_base + (r + 2) * n1];
            for j in 0..n1 {
                za[j] = C::new(row0[j], row1[j]);
            }
            row_plan.forward(&mut za, &mut scratch);
            for k in 0..h {
                let zk = za[k];
                let zm = za[(n1 - k) % n1].conj();
                let even = 0.5 * (zk + zm);
                let odd = C::new(0.0, -0.5) * (zk - zm);
                write_c(&mut out, (out_base + r * h + k) as usize, even);
                write_c(&mut out, (out_base + (r + 1) * h + k) as usize, odd);
            }
            r += 2;
        }
        if r < n0 {
            let row = &src[in_base + r * n1..in_base + (r + 1) * n1];
            for j in 0..n1 {
                za[j] = C::new(row[j], 0.0);
            }
            row_plan.forward(&mut za, &mut scratch);
            for k in 0..h {
                write_c(&mut out, out_base + r * h + k, za[k]);
            }
        }
        // Column transforms over the kept columns only.
        for c in 0..h {
            for i in 0..n0 {
                col[i] = read_c(&out, out_base + i * h + c);
            }
            col_plan.forward(&mut col, &mut scratch);
            for i in 0..n0 {
                write_c(&mut out, out_base + i * h + c, col[i]);
            }
        }
    }
    Ok(out)
}

/// Inverse of `rdft2`. `full_cols` declares the physical extent of the
/// last axis; it must be consistent with the stored half-spectrum width.
pub fn irdft2(x: &Tensor, full_cols: usize) -> Result<Tensor> {
    if x.is_real() {
        return Err(Error::DtypeMismatch {
            op: "irdft2",
            expected: "complex128",
            got: x.dtype().name(),
        });
    }
    let (batch, n0, h) = last2(x.shape())?;
    if half_cols(full_cols) != h {
        return Err(Error::invalid(format!(
            "irdft2: declared {full_cols} columns is inconsistent with stored half width {h}"
        )));
    }
    let n1 = full_cols;
    let mut out_shape = x.shape().to_vec();
    let rank = out_shape.len();
    out_shape[rank - 1] = n1;
    let mut out = Tensor::zeros(Dtype::Real, &out_shape);

    let row_plan = plan(n1);
    let col_plan = plan(n0);
    let mut scratch = Vec::new();
    let mut col = vec![C::new(0.0, 0.0); n0];
    let mut row = vec![C::new(0.0, 0.0); n1];
    let mut work = vec![C::new(0.0, 0.0); n0 * h];

    let src = x.data();
    for b in 0..batch {
        let in_base = b * n0 * h * 2;
        // Inverse column transforms on the stored columns.
        let col_norm = 1.0 / n0 as f64;
        for c in 0..h {
            for i in 0..n0 {
                let off = in_base + (i * h + c) * 2;
                col[i] = C::new(src[off], src[off + 1]);
            }
            col_plan.backward(&mut col, &mut scratch);
            for i in 0..n0 {
                work[i * h + c] = col[i] * col_norm;
            }
        }
        // Hermitian row extension, inverse row transforms, real part.
        let row_norm = 1.0 / n1 as f64;
        for i in 0..n0 {
            row[..h].copy_from_slice(&work[i * h..(i + 1) * h]);
            for c in h..n1 {
                row[c] = work[i * h + (n1 - c)].conj();
            }
            row_plan.backward(&mut row, &mut scratch);
            let dst = &mut out.data_mut()[b * n0 * n1 + i * n1..b * n0 * n1 + (i + 1) * n1];
            for (d, v) in dst.iter_mut().zip(&row) {
                *d = v.re * row_norm;
            }
        }
    }
    Ok(out)
}

/// Exact transpose of `rdft2` (paired-real inner products): embed the
/// half-spectrum cotangent in a zero full spectrum and apply the
/// unnormalized conjugate transform, keeping the real part. Columns
/// beyond the stored half are zero, so only the stored columns are
/// transformed along the first axis.
pub fn rdft2_adjoint(g: &Tensor, full_cols: usize) -> Result<Tensor> {
    let (batch, n0, h) = last2(g.shape())?;
    if half_cols(full_cols) != h {
        return Err(Error::invalid(
            "rdft2_adjoint: inconsistent declared extents".to_string(),
        ));
    }
    let n1 = full_cols;
    let mut shape = g.shape().to_vec();
    let rank = shape.len();
    shape[rank - 1] = n1;
    let mut out = Tensor::zeros(Dtype::Real, &shape);
    let row_plan = plan(n1);
    let col_plan = plan(n0);
    let mut scratch = Vec::new();
    let mut col = vec![C::new(0.0, 0.0); n0];
    let mut row = vec![C::new(0.0, 0.0); n1];
    let mut work = vec![C::new(0.0, 0.0); n0 * h];
    let src = g.data();
    for b in 0..batch {
        let base = b * n0 * h * 2;
        for c in 0..h {
            for i in 0..n0 {
                let off = base + (i * h + c) * 2;
                col[i] = C::new(src[off], src[off + 1]);
            }
            col_plan.backward(&mut col, &mut scratch);
            for i in 0..n0 {
                work[i * h + c] = col[i];
            }
        }
        for i in 0..n0 {
            row[..h].copy_from_slice(&work[i * h..(i + 1) * h]);
            for v in row[h..].iter_mut() {
                *v = C::new(0.0, 0.0);
            }
            row_plan.backward(&mut row, &mut scratch);
            let dst = &mut out.data_mut()[b * n0 * n1 + i * n1..b * n0 * n1 + (i + 1) * n1];
            for (d, v) in dst.iter_mut().zip(&row) {
                *d = v.re;
            }
        }
    }
    Ok(out)
}

/// Exact transpose of `irdft2`: forward transform of the real cotangent
/// over n0*n1, folded onto the stored half-spectrum with conjugation on
/// the mirrored columns. For a real cotangent the transform is Hermitian,
/// so the fold reduces to doubling the non-self-conjugate columns of the
/// half transform.
pub fn irdft2_adjoint(g: &Tensor, h: usize) -> Result<Tensor> {
    let (batch, n0, n1) = last2(g.shape())?;
    if half_cols(n1) != h {
        return Err(Error::invalid(
            "irdft2_adjoint: inconsistent half width".to_string(),
        ));
    }
    if !g.is_real() {
        return Err(Error::DtypeMismatch {
            op: "irdft2_adjoint",
            expected: "real64",
            got: g.dtype().name(),
        });
    }
    let mut out = rdft2(g)?;
    let scale = 1.0 / (n0 * n1) as f64;
    let data = out.data_mut();
    for b in 0..batch {
        for i in 0..n0 {
            for c in 0..h {
                let doubled = c > 0 && n1 - c >= h;
                let w = if doubled { 2.0 * scale } else { scale };
                let off = (b * n0 * h + i * h + c) * 2;
                data[off] *= w;
                data[off + 1] *= w;
            }
        }
    }
    Ok(out)
}

fn read_c(t: &Tensor, flat: usize) -> C {
    t.complex_at(flat)
}

fn write_c(t: &mut Tensor, flat: usize, v: C) {
    t.set_complex(flat, v);
}

/// Extract the centered band of frequencies xi in [-(k-1), k-1]^2 from a
/// centered full spectrum.
pub fn truncate_band(x: &Tensor, k: usize) -> Result<Tensor> {
    let (batch, n0, n1) = last2(x.shape())?;
    let bw = 2 * k - 1;
    if k == 0 || bw > n0 || bw > n1 {
        return Err(Error::invalid(format!(
            "band of width {bw} does not fit a {n0}x{n1} grid"
        )));
    }
    let (c0, c1) = (n0 / 2, n1 / 2);
    let lanes = x.dtype().lanes();
    let mut shape = x.shape().to_vec();
    let rank = shape.len();
    shape[rank - 2] = bw;
    shape[rank - 1] = bw;
    let mut out = Tensor::zeros(x.dtype(), &shape);
    let src = x.data();
    let dst = out.data_mut();
    for b in 0..batch {
        for a in 0..bw {
            let si = c0 + a + 1 - k;
            for bb in 0..bw {
                let sj = c1 + bb + 1 - k;
                let d = (b * bw * bw + a * bw + bb) * lanes;
                let s = (b * n0 * n1 + si * n1 + sj) * lanes;
                dst[d..d + lanes].copy_from_slice(&src[s..s + lanes]);
            }
        }
    }
    Ok(out)
}

/// Embed a centered band into an all-zero centered spectrum of the target
/// extents. With larger extents this is the zero-shot super-resolution
/// mechanism: same band, finer grid.
pub fn pad_band(band: &Tensor, target: (usize, usize)) -> Result<Tensor> {
    let (batch, bw0, bw1) = last2(band.shape())?;
    if bw0 != bw1 || bw0 % 2 == 0 {
        return Err(Error::invalid(format!(
            "pad_band expects an odd square band, got {bw0}x{bw1}"
        )));
    }
    let bw = bw0;
    let (n0, n1) = target;
    if bw > n0 || bw > n1 {
        return Err(Error::invalid(format!(
            "band of width {bw} does not fit a {n0}x{n1} grid"
        )));
    }
    let k = (bw + 1) / 2;
    let (c0, c1) = (n0 / 2, n1 / 2);
    let lanes = band.dtype().lanes();
    let mut shape = band.shape().to_vec();
    let rank = shape.len();
    shape[rank - 2] = n0;
    shape[rank - 1] = n1;
    let mut out = Tensor::zeros(band.dtype(), &shape);
    let src = band.data();
    let dst = out.data_mut();
    for b in 0..batch {
        for a in 0..bw {
            let di = c0 + a + 1 - k;
            for bb in 0..bw {
                let dj = c1 + bb + 1 - k;
                let d = (b * n0 * n1 + di * n1 + dj) * lanes;
                let s = (b * bw * bw + a * bw + bb) * lanes;
                dst[d..d + lanes].copy_from_slice(&src[s..s + lanes]);
            }
        }
    }
    Ok(out)
}

/// Gather the centered odd band directly from a half spectrum, using
/// Hermitian symmetry for the negative frequencies of the last axis.
pub fn band_from_half(x: &Tensor, k: usize, full_cols: usize) -> Result<Tensor> {
    let (batch, n0, h) = last2(x.shape())?;
    if half_cols(full_cols) != h {
        return Err(Error::invalid(
            "band_from_half: inconsistent declared extents".to_string(),
        ));
    }
    let bw = 2 * k - 1;
    if k == 0 || bw > n0 || bw > full_cols {
        return Err(Error::invalid(format!(
            "band of width {bw} does not fit a {n0}x{full_cols} grid"
        )));
    }
    let mut shape = x.shape().to_vec();
    let rank = shape.len();
    shape[rank - 2] = bw;
    shape[rank - 1] = bw;
    let mut out = Tensor::zeros(Dtype::Complex, &shape);
    for bt in 0..batch {
        let base = bt * n0 * h;
        for ia in 0..bw {
            let a = ia as i64 - (k as i64 - 1);
            for ib in 0..bw {
                let b = ib as i64 - (k as i64 - 1);
                let v = if b >= 0 {
                    let r = wrap(a, n0);
                    read_c(x, base + r * h + b as usize)
                } else {
                    let r = wrap(-a, n0);
                    read_c(x, base + r * h + (-b) as usize).conj()
                };
                write_c(&mut out, bt * bw * bw + ia * bw + ib, v);
            }
        }
    }
    Ok(out)
}

/// Exact transpose of `band_from_half`.
pub fn band_from_half_adjoint(g: &Tensor, n0: usize, full_cols: usize) -> Result<Tensor> {
    let (batch, bw0, bw1) = last2(g.shape())?;
    if bw0 != bw1 || bw0 % 2 == 0 {
        return Err(Error::invalid("band adjoint expects an odd square band".to_string()));
    }
    let bw = bw0;
    let k = (bw + 1) / 2;
    let h = half_cols(full_cols);
    let mut shape = g.shape().to_vec();
    let rank = shape.len();
    shape[rank - 2] = n0;
    shape[rank - 1] = h;
    let mut out = Tensor::zeros(Dtype::Complex, &shape);
    for bt in 0..batch {
        let base = bt * n0 * h;
        for ia in 0..bw {
            let a = ia as i64 - (k as i64 - 1);
            for ib in 0..bw {
                let b = ib as i64 - (k as i64 - 1);
                let gv = read_c(g, bt * bw * bw + ia * bw + ib);
                if b >= 0 {
                    let r = wrap(a, n0);
                    let idx = base + r * h + b as usize;
                    let v = read_c(&out, idx) + gv;
                    write_c(&mut out, idx, v);
                } else {
                    let r = wrap(-a, n0);
                    let idx = base + r * h + (-b) as usize;
                    let v = read_c(&out, idx) + gv.conj();
                    write_c(&mut out, idx, v);
                }
            }
        }
    }
    Ok(out)
}

/// Scatter the non-negative-frequency columns of a centered odd band into
/// an all-zero half spectrum on an (n0, full_cols) grid.
pub fn half_from_band(band: &Tensor, n0: usize, full_cols: usize) -> Result<Tensor> {
    let (batch, bw0, bw1) = last2(band.shape())?;
    if bw0 != bw1 || bw0 % 2 == 0 {
        return Err(Error::invalid("half_from_band expects an odd square band".to_string()));
    }
    let bw = bw0;
    let k = (bw + 1) / 2;
    if bw > n0 || bw > full_cols {
        return Err(Error::invalid(format!(
            "band of width {bw} does not fit a {n0}x{full_cols} grid"
        )));
    }
    let h = half_cols(full_cols);
    let mut shape = band.shape().to_vec();
    let rank = shape.len();
    shape[rank - 2] = n0;
    shape[rank - 1] = h;
    let mut out = Tensor::zeros(Dtype::Complex, &shape);
    for bt in 0..batch {
        for ia in 0..bw {
            let a = ia as i64 - (k as i64 - 1);
            let r = wrap(a, n0);
            for b in 0..k {
                let ib = b + k - 1;
                let v = read_c(band, bt * bw * bw + ia * bw + ib);
                write_c(&mut out, bt * n0 * h + r * h + b, v);
            }
        }
    }
    Ok(out)
}

/// Exact transpose of `half_from_band`: gather the stored columns back,
/// leaving the dropped negative columns zero.
pub fn half_from_band_adjoint(g: &Tensor, k: usize) -> Result<Tensor> {
    let (batch, n0, h) = last2(g.shape())?;
    let bw = 2 * k - 1;
    let mut shape = g.shape().to_vec();
    let rank = shape.len();
    shape[rank - 2] = bw;
    shape[rank - 1] = bw;
    let mut out = Tensor::zeros(Dtype::Complex, &shape);
    for bt in 0..batch {
        for ia in 0..bw {
            let a = ia as i64 - (k as i64 - 1);
            let r = wrap(a, n0);
            for b in 0..k {
                let ib = b + k - 1;
                let v = read_c(g, bt * n0 * h + r * h + b);
                write_c(&mut out, bt * bw * bw + ia * bw + ib, v);
            }
        }
    }
    Ok(out)
}

pub(crate) fn wrap(i: i64, n: usize) -> usize {
    i.rem_euclid(n as i64) as usize
}

/// Trigonometric interpolation of a real periodic field onto a grid finer
/// by `factor`, via zero-padding the centered spectrum. Even-length
/// Nyquist rows are split across the +/- frequencies, which keeps the
/// interpolant real and makes the map exact for band-limited fields.
pub fn trig_interp(x: &Tensor, factor: usize) -> Result<Tensor> {
    if !x.is_real() {
        return Err(Error::DtypeMismatch {
            op: "trig_interp",
            expected: "real64",
            got: x.dtype().name(),
        });
    }
    let (batch, n0, n1) = last2(x.shape())?;
    if factor == 0 {
        return Err(Error::invalid("interpolation factor must be positive".to_string()));
    }
    if factor == 1 {
        return Ok(x.clone());
    }
    let (m0, m1) = (n0 * factor, n1 * factor);
    let spec = dft2(x, Layout::Standard)?;
    let mut shape = x.shape().to_vec();
    let rank = shape.len();
    shape[rank - 2] = m0;
    shape[rank - 1] = m1;
    let mut fine = Tensor::zeros(Dtype::Complex, &shape);

    // Signed frequencies present at each coarse index, with the even-n
    // Nyquist bin split in half across +n/2 and -n/2.
    fn freq_weights(idx: usize, n: usize) -> Vec<(i64, f64)> {
        let signed = if idx <= n / 2 {
            idx as i64
        } else {
            idx as i64 - n as i64
        };
        if n % 2 == 0 && idx == n / 2 {
            vec![(signed, 0.5), (-signed, 0.5)]
        } else {
            vec![(signed, 1.0)]
        }
    }

    for bt in 0..batch {
        for i in 0..n0 {
            let rows = freq_weights(i, n0);
            for j in 0..n1 {
                let cols = freq_weights(j, n1);
                let v = read_c(&spec, bt * n0 * n1 + i * n1 + j);
                for &(fr, wr) in &rows {
                    for &(fc, wc) in &cols {
                        let di = wrap(fr, m0);
                        let dj = wrap(fc, m1);
                        let idx = bt * m0 * m1 + di * m1 + dj;
                        let acc = read_c(&fine, idx) + v * (wr * wc);
                        write_c(&mut fine, idx, acc);
                    }
                }
            }
        }
    }
    let out = idft2(&fine, Layout::Standard)?;
    Ok(out.real_part().scale((factor * factor) as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{act_plane_modular, GroupElement, Stab};
    use crate::rng::Rng;
    use crate::tensor::Tensor;

    fn random_real(shape: &[usize], rng: &mut Rng) -> Tensor {
        let n = numel_of(shape);
        Tensor::from_real(shape, (0..n).map(|_| rng.normal()).collect())
    }

    fn random_complex(shape: &[usize], rng: &mut Rng) -> Tensor {
        let n = numel_of(shape);
        Tensor::from_complex(
            shape,
            (0..n).map(|_| C::new(rng.normal(), rng.normal())).collect(),
        )
    }

    /// Direct O(n^4) double-sum DFT used as the oracle.
    fn naive_dft2(x: &Tensor) -> Tensor {
        let shape = x.shape();
        let (n0, n1) = (shape[shape.len() - 2], shape[shape.len() - 1]);
        let vals = x.to_complex_vec();
        let mut out = vec![C::new(0.0, 0.0); vals.len()];
        let batch = vals.len() / (n0 * n1);
        for b in 0..batch {
            for k0 in 0..n0 {
                for k1 in 0..n1 {
                    let mut acc = C::new(0.0, 0.0);
                    for i in 0..n0 {
                        for j in 0..n1 {
                            let ang = -2.0 * std::f64::consts::PI
                                * (k0 as f64 * i as f64 / n0 as f64
                                    + k1 as f64 * j as f64 / n1 as f64);
                            acc += vals[b * n0 * n1 + i * n1 + j] * C::new(ang.cos(), ang.sin());
                        }
                    }
                    out[b * n0 * n1 + k0 * n1 + k1] = acc;
                }
            }
        }
        Tensor::from_complex(shape, out)
    }

    #[test]
    fn delta_transforms_to_ones() {
        let mut x = Tensor::zeros(Dtype::Real, &[4, 4]);
        x.set_real(0, 1.0);
        let spec = dft2(&x, Layout::Standard).unwrap();
        for i in 0..16 {
            assert!((spec.complex_at(i) - C::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn constant_field_is_pure_dc() {
        let n = 6;
        let c = -0.7;
        let x = Tensor::from_real(&[n, n], vec![c; n * n]);
        let spec = dft2(&x, Layout::Standard).unwrap();
        for i in 0..n {
            for j in 0..n {
                let v = spec.complex_at(i * n + j);
                let expect = if i == 0 && j == 0 {
                    C::new((n * n) as f64 * c, 0.0)
                } else {
                    C::new(0.0, 0.0)
                };
                assert!((v - expect).norm() < 1e-10);
            }
        }
        // Centered layout parks the DC bin at (n/2, n/2).
        let centered = dft2(&x, Layout::Centered).unwrap();
        let v = centered.complex_at((n / 2) * n + n / 2);
        assert!((v - C::new((n * n) as f64 * c, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn matches_naive_dft_oracle_on_6x6() {
        let mut rng = Rng::new(3);
        let x = random_real(&[6, 6], &mut rng);
        let fast = dft2(&x, Layout::Standard).unwrap();
        let slow = naive_dft2(&x);
        assert!(fast.sub(&slow).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn matches_naive_dft_oracle_on_pow2_and_batch() {
        let mut rng = Rng::new(4);
        let x = random_complex(&[2, 8, 4], &mut rng);
        let fast = dft2(&x, Layout::Standard).unwrap();
        let slow = naive_dft2(&x);
        assert!(fast.sub(&slow).unwrap().max_abs() < 1e-9);
    }

    #[test]
    fn inverse_pair_round_trip() {
        let mut rng = Rng::new(5);
        for layout in [Layout::Standard, Layout::Centered] {
            let x = random_complex(&[5, 6], &mut rng);
            let back = idft2(&dft2(&x, layout).unwrap(), layout).unwrap();
            assert!(back.sub(&x).unwrap().max_abs() < 1e-10);
        }
    }

    #[test]
    fn all_ones_spectrum_is_delta() {
        let n = 8;
        let spec = Tensor::from_complex(&[n, n], vec![C::new(1.0, 0.0); n * n]);
        let x = idft2(&spec, Layout::Standard).unwrap();
        assert!((x.complex_at(0) - C::new(1.0, 0.0)).norm() < 1e-12);
        for i in 1..n * n {
            assert!(x.complex_at(i).norm() < 1e-12);
        }
    }

    #[test]
    fn hermitian_spectrum_inverts_to_real_field() {
        let mut rng = Rng::new(6);
        let n = 8;
        let x = random_complex(&[n, n], &mut rng);
        // Hermitian projection: S'(a, b) = (S(a, b) + conj(S(-a, -b))) / 2.
        let mut sym = Tensor::zeros(Dtype::Complex, &[n, n]);
        for a in 0..n {
            for b in 0..n {
                let v = x.complex_at(a * n + b);
                let m = x.complex_at(((n - a) % n) * n + (n - b) % n).conj();
                sym.set_complex(a * n + b, 0.5 * (v + m));
            }
        }
        let field = idft2(&sym, Layout::Standard).unwrap();
        assert!(field.max_imag_abs() < 1e-10);
    }

    #[test]
    fn rdft2_keeps_forced_half_width() {
        let x = Tensor::zeros(Dtype::Real, &[4, 4]);
        let spec = rdft2(&x).unwrap();
        assert_eq!(spec.shape(), &[4, 3]);
    }

    #[test]
    fn rdft2_matches_full_dft_slice_and_round_trips() {
        let mut rng = Rng::new(7);
        for n in [8usize, 6, 5] {
            let x = random_real(&[n, n], &mut rng);
            let half = rdft2(&x).unwrap();
            let full = dft2(&x, Layout::Standard).unwrap();
            let h = half_cols(n);
            for i in 0..n {
                for c in 0..h {
                    let lhs = half.complex_at(i * h + c);
                    let rhs = full.complex_at(i * n + c);
                    assert!((lhs - rhs).norm() < 1e-10, "n={n} i={i} c={c}");
                }
            }
            let back = irdft2(&half, n).unwrap();
            assert!(back.sub(&x).unwrap().max_abs() < 1e-10);
        }
    }

    #[test]
    fn irdft2_rejects_inconsistent_extents() {
        let half = Tensor::zeros(Dtype::Complex, &[8, 5]);
        assert!(irdft2(&half, 10).is_err());
        assert!(irdft2(&half, 8).is_ok());
    }

    #[test]
    fn cosine_mode_has_single_stored_peak() {
        let n = 8;
        let mut x = Tensor::zeros(Dtype::Real, &[n, n]);
        for i in 0..n {
            for j in 0..n {
                x.set_real(i * n + j, (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos());
            }
        }
        let half = rdft2(&x).unwrap();
        let h = half_cols(n);
        // Peaks of cos(2 pi x1 / n) sit at rows +-1, column 0.
        for i in 0..n {
            for c in 0..h {
                let mag = half.complex_at(i * h + c).norm();
                if (i == 1 || i == n - 1) && c == 0 {
                    assert!((mag - (n * n) as f64 / 2.0).abs() < 1e-9);
                } else {
                    assert!(mag < 1e-9, "unexpected energy at ({i},{c})");
                }
            }
        }
    }

    #[test]
    fn truncate_k1_keeps_only_dc() {
        let mut rng = Rng::new(8);
        let x = random_real(&[6, 6], &mut rng);
        let spec = dft2(&x, Layout::Centered).unwrap();
        let band = truncate_band(&spec, 1).unwrap();
        assert_eq!(band.shape(), &[1, 1]);
        let dc = spec.complex_at(3 * 6 + 3);
        assert!((band.complex_at(0) - dc).norm() < 1e-12);
    }

    #[test]
    fn pad_after_truncate_zeroes_out_of_band() {
        let mut rng = Rng::new(9);
        let n = 8;
        let k = 3;
        let x = random_complex(&[n, n], &mut rng);
        let band = truncate_band(&x, k).unwrap();
        let back = pad_band(&band, (n, n)).unwrap();
        let c = n / 2;
        for a in 0..n {
            for b in 0..n {
                let inside = (a as i64 - c as i64).abs() <= k as i64 - 1
                    && (b as i64 - c as i64).abs() <= k as i64 - 1;
                let v = back.complex_at(a * n + b);
                if inside {
                    assert!((v - x.complex_at(a * n + b)).norm() < 1e-15);
                } else {
                    assert_eq!(v, C::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn band_larger_than_grid_is_rejected() {
        let x = Tensor::zeros(Dtype::Complex, &[4, 4]);
        assert!(truncate_band(&x, 3).is_err());
    }

    #[test]
    fn pad_to_double_grid_matches_fourier_series_oracle() {
        // Band-limited field: padding its band to a 2n grid then inverting
        // must agree with evaluating the truncated Fourier series at the
        // fine grid points.
        let mut rng = Rng::new(10);
        let n = 8;
        let k = 3;
        let coarse = random_real(&[n, n], &mut rng);
        let band = truncate_band(&dft2(&coarse, Layout::Centered).unwrap(), k).unwrap();

        let m = 2 * n;
        let fine_spec = pad_band(&band, (m, m)).unwrap();
        let fine = idft2(&fine_spec, Layout::Centered).unwrap();
        // idft2 divides by m^2 while the band coefficients came from an
        // n^2 grid; rescale to keep the series normalization.
        let fine = fine.scale((m * m) as f64 / (n * n) as f64);

        let bw = 2 * k - 1;
        for p in 0..m {
            for q in 0..m {
                let mut acc = C::new(0.0, 0.0);
                for ia in 0..bw {
                    let a = ia as i64 - (k as i64 - 1);
                    for ib in 0..bw {
                        let bfreq = ib as i64 - (k as i64 - 1);
                        let coef = band.complex_at(ia * bw + ib);
                        let ang = 2.0 * std::f64::consts::PI
                            * (a as f64 * p as f64 + bfreq as f64 * q as f64)
                            / m as f64;
                        acc += coef * C::new(ang.cos(), ang.sin());
                    }
                }
                acc /= (n * n) as f64;
                let got = fine.complex_at(p * m + q);
                assert!((got - acc).norm() < 1e-10, "mismatch at ({p},{q})");
            }
        }
    }

    #[test]
    fn parseval_identity() {
        let mut rng = Rng::new(11);
        let x = random_real(&[12, 12], &mut rng);
        let spec = dft2(&x, Layout::Standard).unwrap();
        let phys: f64 = x.data().iter().map(|v| v * v).sum();
        let freq: f64 = spec
            .to_complex_vec()
            .iter()
            .map(|c| c.norm_sqr())
            .sum::<f64>()
            / (12.0 * 12.0);
        assert!((phys - freq).abs() < 1e-8 * phys.max(1.0));
    }

    #[test]
    fn dft_commutes_with_modular_rotation_and_flip() {
        // Discrete form of the transform-equivariance lemma, standard
        // layout, modular index arithmetic, including even and odd grids.
        let mut rng = Rng::new(12);
        for n in [8usize, 7] {
            for stab_idx in [1usize, 4] {
                let g = GroupElement::pure(Stab::p4m(stab_idx % 4, stab_idx >= 4));
                let x = random_real(&[n, n], &mut rng).to_complex();
                let lhs = dft2(&act_plane_modular(&g, &x).unwrap(), Layout::Standard).unwrap();
                let rhs = act_plane_modular(&g, &dft2(&x, Layout::Standard).unwrap()).unwrap();
                assert!(
                    lhs.sub(&rhs).unwrap().max_abs() < 1e-10,
                    "n={n} stab={stab_idx}"
                );
            }
        }
    }

    #[test]
    fn translation_acquires_exact_phase() {
        // Pure translation by b multiplies the spectrum by
        // exp(-2 pi i <xi, b> / n), entry-wise.
        let mut rng = Rng::new(13);
        let n = 8;
        let x = random_real(&[n, n], &mut rng).to_complex();
        let shift = [3i64, 5i64];
        let g = GroupElement::new(Stab::identity_p4(), shift);
        let shifted = act_plane_modular(&g, &x).unwrap();
        let spec = dft2(&x, Layout::Standard).unwrap();
        let spec_shifted = dft2(&shifted, Layout::Standard).unwrap();
        for a in 0..n {
            for b in 0..n {
                let ang = -2.0 * std::f64::consts::PI
                    * (a as f64 * shift[0] as f64 + b as f64 * shift[1] as f64)
                    / n as f64;
                let expect = spec.complex_at(a * n + b) * C::new(ang.cos(), ang.sin());
                let got = spec_shifted.complex_at(a * n + b);
                assert!((got - expect).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn adjoint_pairs_are_exact() {
        let mut rng = Rng::new(14);
        let n = 6;
        let h = half_cols(n);
        // rdft2 and its transpose.
        let x = random_real(&[n, n], &mut rng);
        let y = random_complex(&[n, h], &mut rng);
        let lhs = rdft2(&x).unwrap().dot(&y);
        let rhs = x.dot(&rdft2_adjoint(&y, n).unwrap());
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));

        // irdft2 and its transpose.
        let xh = random_complex(&[n, h], &mut rng);
        let yr = random_real(&[n, n], &mut rng);
        let lhs = irdft2(&xh, n).unwrap().dot(&yr);
        let rhs = xh.dot(&irdft2_adjoint(&yr, h).unwrap());
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));

        // band_from_half and its transpose.
        let k = 3;
        let bw = 2 * k - 1;
        let xb = random_complex(&[n, h], &mut rng);
        let yb = random_complex(&[bw, bw], &mut rng);
        let lhs = band_from_half(&xb, k, n).unwrap().dot(&yb);
        let rhs = xb.dot(&band_from_half_adjoint(&yb, n, n).unwrap());
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));

        // half_from_band and its transpose.
        let xb2 = random_complex(&[bw, bw], &mut rng);
        let yh = random_complex(&[n, h], &mut rng);
        let lhs = half_from_band(&xb2, n, n).unwrap().dot(&yh);
        let rhs = xb2.dot(&half_from_band_adjoint(&yh, k).unwrap());
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn band_from_half_matches_centered_truncation() {
        let mut rng = Rng::new(15);
        for n in [8usize, 7] {
            let k = 3;
            let x = random_real(&[n, n], &mut rng);
            let via_half = band_from_half(&rdft2(&x).unwrap(), k, n).unwrap();
            let via_full = truncate_band(&dft2(&x, Layout::Centered).unwrap(), k).unwrap();
            assert!(via_half.sub(&via_full).unwrap().max_abs() < 1e-10, "n={n}");
        }
    }

    #[test]
    fn trig_interp_is_exact_on_band_limited_fields() {
        let mut rng = Rng::new(16);
        let n = 8;
        let k = 3;
        let raw = random_real(&[n, n], &mut rng);
        let band = truncate_band(&dft2(&raw, Layout::Centered).unwrap(), k).unwrap();
        let coarse = idft2(&pad_band(&band, (n, n)).unwrap(), Layout::Centered)
            .unwrap()
            .real_part();
        let factor = 2;
        let fine = trig_interp(&coarse, factor).unwrap();
        // Direct series evaluation at the fine points.
        let m = n * factor;
        let bw = 2 * k - 1;
        for p in 0..m {
            for q in 0..m {
                let mut acc = 0.0;
                for ia in 0..bw {
                    let a = ia as i64 - (k as i64 - 1);
                    for ib in 0..bw {
                        let b = ib as i64 - (k as i64 - 1);
                        let coef = band.complex_at(ia * bw + ib);
                        let ang = 2.0 * std::f64::consts::PI
                            * (a as f64 * p as f64 + b as f64 * q as f64)
                            / m as f64;
                        acc += (coef * C::new(ang.cos(), ang.sin())).re;
                    }
                }
                acc /= (n * n) as f64;
                assert!((fine.real_at(p * m + q) - acc).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn trig_interp_strided_consistency() {
        // At the shared grid points the interpolant reproduces the
        // original samples exactly.
        let mut rng = Rng::new(17);
        let n = 8;
        let x = random_real(&[n, n], &mut rng);
        let fine = trig_interp(&x, 2).unwrap();
        for i in 0..n {
            for j in 0..n {
                let v = fine.real_at((2 * i) * (2 * n) + 2 * j);
                assert!((v - x.real_at(i * n + j)).abs() < 1e-10);
            }
        }
        assert!(fine.max_imag_abs() < 1e-12);
    }
}
