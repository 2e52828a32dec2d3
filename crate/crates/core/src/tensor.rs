//! Dense real/complex n-dimensional arrays in row-major order.
//!
//! Real tensors store one f64 per element; complex tensors store
//! interleaved (re, im) pairs. All arithmetic is 64-bit. Tensors are
//! immutable values once built by an op: every operation returns a new
//! tensor, which keeps sharing across threads trivially safe.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    Real,
    Complex,
}

impl Dtype {
    /// Number of f64 lanes per element.
    pub fn lanes(self) -> usize {
        match self {
            Dtype::Real => 1,
            Dtype::Complex => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dtype::Real => "real64",
            Dtype::Complex => "complex128",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    dtype: Dtype,
    shape: Vec<usize>,
    data: Vec<f64>,
}

pub fn numel_of(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    pub fn zeros(dtype: Dtype, shape: &[usize]) -> Tensor {
        let n = numel_of(shape) * dtype.lanes();
        Tensor {
            dtype,
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn from_real(shape: &[usize], data: Vec<f64>) -> Tensor {
        assert_eq!(data.len(), numel_of(shape), "real payload length mismatch");
        Tensor {
            dtype: Dtype::Real,
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn from_complex(shape: &[usize], data: Vec<Complex64>) -> Tensor {
        assert_eq!(data.len(), numel_of(shape), "complex payload length mismatch");
        let mut raw = Vec::with_capacity(data.len() * 2);
        for c in data {
            raw.push(c.re);
            raw.push(c.im);
        }
        Tensor {
            dtype: Dtype::Complex,
            shape: shape.to_vec(),
            data: raw,
        }
    }

    /// Raw storage including the dtype lane factor; only used by io and ops.
    pub fn from_raw(dtype: Dtype, shape: &[usize], data: Vec<f64>) -> Tensor {
        assert_eq!(data.len(), numel_of(shape) * dtype.lanes());
        Tensor {
            dtype,
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor::from_real(&[], vec![v])
    }

    pub fn dtype(&self) -> Dtype {
        self.dtype
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        numel_of(&self.shape)
    }

    pub fn is_real(&self) -> bool {
        self.dtype == Dtype::Real
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Flat offset of a multi-index, in elements (not lanes).
    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut off = 0;
        for (i, &ix) in idx.iter().enumerate() {
            debug_assert!(ix < self.shape[i]);
            off = off * self.shape[i] + ix;
        }
        off
    }

    pub fn real_at(&self, flat: usize) -> f64 {
        debug_assert_eq!(self.dtype, Dtype::Real);
        self.data[flat]
    }

    pub fn complex_at(&self, flat: usize) -> Complex64 {
        debug_assert_eq!(self.dtype, Dtype::Complex);
        Complex64::new(self.data[2 * flat], self.data[2 * flat + 1])
    }

    pub fn set_real(&mut self, flat: usize, v: f64) {
        debug_assert_eq!(self.dtype, Dtype::Real);
        self.data[flat] = v;
    }

    pub fn set_complex(&mut self, flat: usize, v: Complex64) {
        debug_assert_eq!(self.dtype, Dtype::Complex);
        self.data[2 * flat] = v.re;
        self.data[2 * flat + 1] = v.im;
    }

    pub fn to_complex_vec(&self) -> Vec<Complex64> {
        match self.dtype {
            Dtype::Real => self.data.iter().map(|&r| Complex64::new(r, 0.0)).collect(),
            Dtype::Complex => self
                .data
                .chunks_exact(2)
                .map(|p| Complex64::new(p[0], p[1]))
                .collect(),
        }
    }

    /// Promote a real tensor to complex (imaginary part zero); identity on complex.
    pub fn to_complex(&self) -> Tensor {
        match self.dtype {
            Dtype::Complex => self.clone(),
            Dtype::Real => Tensor::from_complex(
                &self.shape,
                self.data.iter().map(|&r| Complex64::new(r, 0.0)).collect(),
            ),
        }
    }

    pub fn real_part(&self) -> Tensor {
        match self.dtype {
            Dtype::Real => self.clone(),
            Dtype::Complex => Tensor::from_real(
                &self.shape,
                self.data.chunks_exact(2).map(|p| p[0]).collect(),
            ),
        }
    }

    pub fn imag_part(&self) -> Tensor {
        match self.dtype {
            Dtype::Real => Tensor::zeros(Dtype::Real, &self.shape),
            Dtype::Complex => Tensor::from_real(
                &self.shape,
                self.data.chunks_exact(2).map(|p| p[1]).collect(),
            ),
        }
    }

    pub fn conj(&self) -> Tensor {
        match self.dtype {
            Dtype::Real => self.clone(),
            Dtype::Complex => {
                let mut out = self.clone();
                for p in out.data.chunks_exact_mut(2) {
                    p[1] = -p[1];
                }
                out
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    pub fn max_imag_abs(&self) -> f64 {
        match self.dtype {
            Dtype::Real => 0.0,
            Dtype::Complex => self
                .data
                .chunks_exact(2)
                .fold(0.0f64, |m, p| m.max(p[1].abs())),
        }
    }

    /// L2 norm treating complex entries as (re, im) pairs of reals.
    pub fn norm2(&self) -> f64 {
        self.data.iter().map(|&v| v * v).sum::<f64>().sqrt()
    }

    /// Inner product treating complex entries as paired reals.
    pub fn dot(&self, other: &Tensor) -> f64 {
        debug_assert_eq!(self.data.len(), other.data.len());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a * b)
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn check_same(&self, other: &Tensor, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op,
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        if self.dtype != other.dtype {
            return Err(Error::DtypeMismatch {
                op,
                expected: self.dtype.name(),
                got: other.dtype.name(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same(other, "add")?;
        let mut out = self.clone();
        for (o, &b) in out.data.iter_mut().zip(&other.data) {
            *o += b;
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same(other, "sub")?;
        let mut out = self.clone();
        for (o, &b) in out.data.iter_mut().zip(&other.data) {
            *o -= b;
        }
        Ok(out)
    }

    /// In-place accumulate; shapes and dtypes must already agree.
    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        debug_assert_eq!(self.dtype, other.dtype);
        for (o, &b) in self.data.iter_mut().zip(&other.data) {
            *o += b;
        }
    }

    pub fn scale(&self, c: f64) -> Tensor {
        let mut out = self.clone();
        for o in out.data.iter_mut() {
            *o *= c;
        }
        out
    }

    pub fn neg(&self) -> Tensor {
        self.scale(-1.0)
    }

    /// Elementwise product of real tensors.
    pub fn hadamard(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same(other, "hadamard")?;
        if self.dtype != Dtype::Real {
            return Err(Error::DtypeMismatch {
                op: "hadamard",
                expected: "real64",
                got: self.dtype.name(),
            });
        }
        let mut out = self.clone();
        for (o, &b) in out.data.iter_mut().zip(&other.data) {
            *o *= b;
        }
        Ok(out)
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Slice along axis 0, yielding an owned tensor of shape (len, rest...).
    pub fn slice0(&self, start: usize, len: usize) -> Tensor {
        assert!(!self.shape.is_empty());
        assert!(start + len <= self.shape[0]);
        let stride = numel_of(&self.shape[1..]) * self.dtype.lanes();
        let mut shape = self.shape.clone();
        shape[0] = len;
        Tensor::from_raw(
            self.dtype,
            &shape,
            self.data[start * stride..(start + len) * stride].to_vec(),
        )
    }

    /// Concatenate along axis 0; trailing shapes and dtypes must agree.
    pub fn concat0(parts: &[&Tensor]) -> Result<Tensor> {
        assert!(!parts.is_empty());
        let first = parts[0];
        let mut total = 0;
        for p in parts {
            if p.shape[1..] != first.shape[1..] || p.dtype != first.dtype {
                return Err(Error::ShapeMismatch {
                    op: "concat0",
                    lhs: first.shape.clone(),
                    rhs: p.shape.clone(),
                });
            }
            total += p.shape[0];
        }
        let mut shape = first.shape.clone();
        shape[0] = total;
        let mut data = Vec::with_capacity(numel_of(&shape) * first.dtype.lanes());
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        Ok(Tensor::from_raw(first.dtype, &shape, data))
    }

    /// Reinterpret the shape without moving data (row-major, same numel).
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel_of(shape) != self.numel() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.shape.clone(),
                rhs: shape.to_vec(),
            });
        }
        let mut out = self.clone();
        out.shape = shape.to_vec();
        Ok(out)
    }
}

/// Channel contraction: out[o, p] = sum_i w[o, i] * x[i, p] for every
/// trailing position p. This is the 1x1-convolution core shared by the
/// lifting, projection and MLP layers.
pub fn contract_channels(x: &Tensor, w: &Tensor) -> Result<Tensor> {
    if w.rank() != 2 || x.rank() < 1 || w.shape()[1] != x.shape()[0] {
        return Err(Error::ShapeMismatch {
            op: "contract_channels",
            lhs: x.shape().to_vec(),
            rhs: w.shape().to_vec(),
        });
    }
    let c_out = w.shape()[0];
    let c_in = w.shape()[1];
    let spatial = numel_of(&x.shape()[1..]);
    let mut out_shape = x.shape().to_vec();
    out_shape[0] = c_out;

    let out_dtype = if x.is_real() && w.is_real() {
        Dtype::Real
    } else {
        Dtype::Complex
    };
    let mut out = Tensor::zeros(out_dtype, &out_shape);

    match (x.dtype(), w.dtype()) {
        (Dtype::Real, Dtype::Real) => {
            for o in 0..c_out {
                let dst = &mut out.data[o * spatial..(o + 1) * spatial];
                for i in 0..c_in {
                    let wv = w.data[o * c_in + i];
                    let src = &x.data[i * spatial..(i + 1) * spatial];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d += wv * s;
                    }
                }
            }
        }
        (Dtype::Complex, Dtype::Real) => {
            for o in 0..c_out {
                let dst = &mut out.data[o * 2 * spatial..(o + 1) * 2 * spatial];
                for i in 0..c_in {
                    let wv = w.data[o * c_in + i];
                    let src = &x.data[i * 2 * spatial..(i + 1) * 2 * spatial];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d += wv * s;
                    }
                }
            }
        }
        _ => {
            // Complex weights; promote x if needed.
            let xc = x.to_complex();
            for o in 0..c_out {
                for i in 0..c_in {
                    let wv = w.complex_at(o * c_in + i);
                    for p in 0..spatial {
                        let xv = xc.complex_at(i * spatial + p);
                        let acc = out.complex_at(o * spatial + p) + wv * xv;
                        out.set_complex(o * spatial + p, acc);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Exact-erf GeLU: 0.5 * x * (1 + erf(x / sqrt(2))).
pub fn gelu(x: &Tensor) -> Result<Tensor> {
    if !x.is_real() {
        return Err(Error::DtypeMismatch {
            op: "gelu",
            expected: "real64",
            got: x.dtype().name(),
        });
    }
    let mut out = x.clone();
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    for v in out.data.iter_mut() {
        *v = 0.5 * *v * (1.0 + libm::erf(*v * inv_sqrt2));
    }
    Ok(out)
}

/// Derivative of the exact-erf GeLU: Phi(x) + x * phi(x).
pub fn gelu_derivative(x: &Tensor) -> Result<Tensor> {
    if !x.is_real() {
        return Err(Error::DtypeMismatch {
            op: "gelu_derivative",
            expected: "real64",
            got: x.dtype().name(),
        });
    }
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let inv_sqrt2pi = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let mut out = x.clone();
    for v in out.data.iter_mut() {
        let cdf = 0.5 * (1.0 + libm::erf(*v * inv_sqrt2));
        let pdf = inv_sqrt2pi * (-0.5 * *v * *v).exp();
        *v = cdf + *v * pdf;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_real(shape: &[usize], rng: &mut Rng) -> Tensor {
        let n = numel_of(shape);
        Tensor::from_real(shape, (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect())
    }

    #[test]
    fn contract_scalar_scaling() {
        // x = [[1, 2]] (c_in = 1, two positions), w = [[3]] -> [[3, 6]]
        let x = Tensor::from_real(&[1, 2], vec![1.0, 2.0]);
        let w = Tensor::from_real(&[1, 1], vec![3.0]);
        let y = contract_channels(&x, &w).unwrap();
        assert_eq!(y.data(), &[3.0, 6.0]);
    }

    #[test]
    fn contract_identity() {
        let mut rng = Rng::new(11);
        let x = random_real(&[3, 4], &mut rng);
        let mut w = Tensor::zeros(Dtype::Real, &[3, 3]);
        for i in 0..3 {
            w.set_real(i * 3 + i, 1.0);
        }
        let y = contract_channels(&x, &w).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn contract_matches_triple_loop_oracle() {
        let mut rng = Rng::new(5);
        let x = random_real(&[3, 4, 4], &mut rng);
        let w = random_real(&[5, 3], &mut rng);
        let y = contract_channels(&x, &w).unwrap();

        // Naive triple loop oracle.
        let mut expect = Tensor::zeros(Dtype::Real, &[5, 4, 4]);
        for o in 0..5 {
            for i in 0..3 {
                for p in 0..16 {
                    let v = expect.real_at(o * 16 + p)
                        + w.real_at(o * 3 + i) * x.real_at(i * 16 + p);
                    expect.set_real(o * 16 + p, v);
                }
            }
        }
        let diff = y.sub(&expect).unwrap().max_abs();
        assert!(diff < 1e-12, "diff = {diff}");
    }

    #[test]
    fn contract_is_linear() {
        let mut rng = Rng::new(17);
        let x = random_real(&[2, 5], &mut rng);
        let y = random_real(&[2, 5], &mut rng);
        let w = random_real(&[3, 2], &mut rng);
        let (a, b) = (0.37, -1.21);
        let lhs = contract_channels(&x.scale(a).add(&y.scale(b)).unwrap(), &w).unwrap();
        let rhs = contract_channels(&x, &w)
            .unwrap()
            .scale(a)
            .add(&contract_channels(&y, &w).unwrap().scale(b))
            .unwrap();
        assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn contract_shape_mismatch_is_descriptive() {
        let x = Tensor::zeros(Dtype::Real, &[3, 4]);
        let w = Tensor::zeros(Dtype::Real, &[5, 2]);
        let err = contract_channels(&x, &w).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[3, 4]") && msg.contains("[5, 2]"), "{msg}");
    }

    #[test]
    fn contract_real_weights_complex_activations() {
        let x = Tensor::from_complex(
            &[2, 1],
            vec![Complex64::new(1.0, 2.0), Complex64::new(-1.0, 0.5)],
        );
        let w = Tensor::from_real(&[1, 2], vec![2.0, 4.0]);
        let y = contract_channels(&x, &w).unwrap();
        assert_eq!(y.dtype(), Dtype::Complex);
        let v = y.complex_at(0);
        assert!((v - Complex64::new(-2.0, 6.0)).norm() < 1e-14);
    }

    #[test]
    fn gelu_at_zero_and_saturation() {
        let x = Tensor::from_real(&[2], vec![0.0, 10.0]);
        let y = gelu(&x).unwrap();
        assert_eq!(y.real_at(0), 0.0);
        assert!((y.real_at(1) - 10.0).abs() < 1e-6);
    }

    #[test]
    fn gelu_matches_erf_series_oracle() {
        // Independent erf evaluation by Taylor series:
        // erf(z) = 2/sqrt(pi) * sum_k (-1)^k z^(2k+1) / (k! (2k+1)).
        fn erf_series(z: f64) -> f64 {
            let mut term = z;
            let mut sum = z;
            for k in 1..60 {
                term *= -z * z / k as f64;
                sum += term / (2 * k + 1) as f64;
            }
            sum * 2.0 / std::f64::consts::PI.sqrt()
        }
        let z = -1.0f64;
        let expect = 0.5 * z * (1.0 + erf_series(z * std::f64::consts::FRAC_1_SQRT_2));
        let y = gelu(&Tensor::from_real(&[1], vec![z])).unwrap();
        assert!((y.real_at(0) - expect).abs() < 1e-12);
    }

    #[test]
    fn gelu_rejects_complex() {
        let x = Tensor::zeros(Dtype::Complex, &[2]);
        assert!(gelu(&x).is_err());
    }

    #[test]
    fn gelu_derivative_matches_finite_difference() {
        let xs = [-2.0, -0.5, 0.0, 0.3, 1.7];
        let x = Tensor::from_real(&[5], xs.to_vec());
        let d = gelu_derivative(&x).unwrap();
        let eps = 1e-6;
        for (i, &v) in xs.iter().enumerate() {
            let hi = gelu(&Tensor::from_real(&[1], vec![v + eps])).unwrap().real_at(0);
            let lo = gelu(&Tensor::from_real(&[1], vec![v - eps])).unwrap().real_at(0);
            let fd = (hi - lo) / (2.0 * eps);
            assert!((d.real_at(i) - fd).abs() < 1e-8, "at {v}");
        }
    }

    #[test]
    fn slice_concat_round_trip() {
        let mut rng = Rng::new(23);
        let t = random_real(&[4, 3], &mut rng);
        let a = t.slice0(0, 2);
        let b = t.slice0(2, 2);
        let back = Tensor::concat0(&[&a, &b]).unwrap();
        assert_eq!(back, t);
    }
}
