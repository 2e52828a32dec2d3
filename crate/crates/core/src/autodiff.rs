//! Reverse-mode automatic differentiation over the fixed op set used by
//! the operator and harness modules.
//!
//! Every primitive backward implements the exact paired-real transpose of
//! its forward map: complex values are treated as independent (re, im)
//! pairs, so gradients agree entry-wise with central finite differences.
//! Index permutations adjoint to their inverse permutation, restrictions
//! to zero-padding, and the DFT to its unnormalized conjugate transform.

use num_complex::Complex64 as C;

use crate::error::{Error, Result};
use crate::group::{act_spectrum, centered_source, stab_compose, stab_inverse, Group, Stab};
use crate::spectral;
use crate::tensor::{self, numel_of, Dtype, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

/// A learnable tensor with its accumulated gradient.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub value: Tensor,
    pub grad: Tensor,
}

#[derive(Clone, Debug, Default)]
pub struct Parameters {
    items: Vec<Parameter>,
}

impl Parameters {
    pub fn new() -> Parameters {
        Parameters::default()
    }

    pub fn add(&mut self, value: Tensor) -> ParamId {
        let grad = Tensor::zeros(value.dtype(), value.shape());
        self.items.push(Parameter { value, grad });
        ParamId(self.items.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.items[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.items[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.items.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.items.iter_mut()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.items {
            p.grad.fill_zero();
        }
    }

    /// Total number of real scalars (complex entries count twice).
    pub fn scalar_count(&self) -> usize {
        self.items
            .iter()
            .map(|p| p.value.numel() * p.value.dtype().lanes())
            .sum()
    }
}

#[derive(Clone, Debug)]
enum Op {
    Const,
    Param(ParamId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Scale(NodeId, f64),
    Hadamard(NodeId, NodeId),
    Gelu(NodeId),
    ContractChannels { x: NodeId, w: NodeId },
    Lift { x: NodeId, w: NodeId, d_g: usize },
    Project { f: NodeId, w: NodeId },
    Gconv1x1 { f: NodeId, w: NodeId, group: Group },
    ToComplex(NodeId),
    RealPart(NodeId),
    Rdft2(NodeId),
    Irdft2 { x: NodeId },
    Dft2(NodeId),
    Idft2(NodeId),
    Fftshift(NodeId),
    Ifftshift(NodeId),
    TruncBand { x: NodeId },
    PadBand { b: NodeId },
    BandFromHalf { x: NodeId, full_cols: usize },
    HalfFromBand { b: NodeId },
    HermitianExtend { h: NodeId, k: usize },
    HermitianProject(NodeId),
    OrbitAverage { b: NodeId, group: Group },
    GSpectralMix { x: NodeId, bank: NodeId, group: Group },
    Concat0(Vec<NodeId>),
    Slice0 { x: NodeId, start: usize, len: usize },
    SumAll(NodeId),
    Mean0Stack(NodeId),
    RelL2 { pred: NodeId, target: Tensor },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Const => "const",
            Op::Param(_) => "param",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Scale(..) => "scale",
            Op::Hadamard(..) => "hadamard",
            Op::Gelu(_) => "gelu",
            Op::ContractChannels { .. } => "contract_channels",
            Op::Lift { .. } => "lift",
            Op::Project { .. } => "project",
            Op::Gconv1x1 { .. } => "gconv_1x1",
            Op::ToComplex(_) => "to_complex",
            Op::RealPart(_) => "real_part",
            Op::Rdft2(_) => "rdft2",
            Op::Irdft2 { .. } => "irdft2",
            Op::Dft2(_) => "dft2",
            Op::Idft2(_) => "idft2",
            Op::Fftshift(_) => "fftshift",
            Op::Ifftshift(_) => "ifftshift",
            Op::TruncBand { .. } => "truncate_band",
            Op::PadBand { .. } => "pad_band",
            Op::BandFromHalf { .. } => "band_from_half",
            Op::HalfFromBand { .. } => "half_from_band",
            Op::HermitianExtend { .. } => "hermitian_extend",
            Op::HermitianProject(_) => "hermitian_project",
            Op::OrbitAverage { .. } => "orbit_average",
            Op::GSpectralMix { .. } => "gconv_freq_mix",
            Op::Concat0(_) => "concat0",
            Op::Slice0 { .. } => "slice0",
            Op::SumAll(_) => "sum_all",
            Op::Mean0Stack(_) => "stab_mean",
            Op::RelL2 { .. } => "rel_l2",
        }
    }
}

struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    op: Op,
}

/// Records primitive applications in execution order; `backward` replays
/// them in reverse. A tape is single-threaded; independent tapes run in
/// parallel with no shared state.
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape {
            nodes: Vec::new(),
            consumed: false,
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes[id.0].grad.as_ref()
    }

    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.push(t, Op::Const)
    }

    pub fn param(&mut self, params: &Parameters, id: ParamId) -> NodeId {
        self.push(params.get(id).value.clone(), Op::Param(id))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).scale(c);
        self.push(v, Op::Scale(a, c))
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(v, Op::Hadamard(a, b)))
    }

    pub fn gelu(&mut self, a: NodeId) -> Result<NodeId> {
        let v = tensor::gelu(self.value(a))?;
        Ok(self.push(v, Op::Gelu(a)))
    }

    pub fn contract_channels(&mut self, x: NodeId, w: NodeId) -> Result<NodeId> {
        let v = tensor::contract_channels(self.value(x), self.value(w))?;
        Ok(self.push(v, Op::ContractChannels { x, w }))
    }

    /// Shared-channel lifting: out[:, s] = w . x for every stabilizer
    /// slice (a point-supported kernel is fixed by S_G, so all slices
    /// share one map).
    pub fn lift(&mut self, x: NodeId, w: NodeId, d_g: usize) -> Result<NodeId> {
        let y = tensor::contract_channels(self.value(x), self.value(w))?;
        if y.rank() != 3 {
            return Err(Error::invalid(format!(
                "lift expects (c_in, n, n) input, got {:?}",
                self.value(x).shape()
            )));
        }
        let (d_z, n0, n1) = (y.shape()[0], y.shape()[1], y.shape()[2]);
        let plane = n0 * n1 * y.dtype().lanes();
        let mut out = Tensor::zeros(y.dtype(), &[d_z, d_g, n0, n1]);
        for z in 0..d_z {
            let src = &y.data()[z * plane..(z + 1) * plane];
            for s in 0..d_g {
                out.data_mut()[(z * d_g + s) * plane..(z * d_g + s + 1) * plane]
                    .copy_from_slice(src);
            }
        }
        Ok(self.push(out, Op::Lift { x, w, d_g }))
    }

    /// Stabilizer mean followed by channel contraction.
    pub fn project(&mut self, f: NodeId, w: NodeId) -> Result<NodeId> {
        let mean = stab_mean(self.value(f))?;
        let v = tensor::contract_channels(&mean, self.value(w))?;
        Ok(self.push(v, Op::Project { f, w }))
    }

    /// Stabilizer mean on its own.
    pub fn stab_mean(&mut self, f: NodeId) -> Result<NodeId> {
        let v = stab_mean(self.value(f))?;
        Ok(self.push(v, Op::Mean0Stack(f)))
    }

    /// 1x1 group convolution: out[:, t] = sum_s w[:, :, m(t, s)] f[:, s]
    /// with m(t, s) = compose(s, inverse(t)).
    pub fn gconv_1x1(&mut self, f: NodeId, w: NodeId, group: Group) -> Result<NodeId> {
        let v = gconv1x1_forward(self.value(f), self.value(w), group)?;
        Ok(self.push(v, Op::Gconv1x1 { f, w, group }))
    }

    pub fn to_complex(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).to_complex();
        self.push(v, Op::ToComplex(a))
    }

    pub fn real_part(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).real_part();
        self.push(v, Op::RealPart(a))
    }

    pub fn rdft2(&mut self, x: NodeId) -> Result<NodeId> {
        let v = spectral::rdft2(self.value(x))?;
        Ok(self.push(v, Op::Rdft2(x)))
    }

    pub fn irdft2(&mut self, x: NodeId, full_cols: usize) -> Result<NodeId> {
        let v = spectral::irdft2(self.value(x), full_cols)?;
        Ok(self.push(v, Op::Irdft2 { x }))
    }

    pub fn dft2(&mut self, x: NodeId) -> Result<NodeId> {
        let v = spectral::dft2(self.value(x), spectral::Layout::Standard)?;
        Ok(self.push(v, Op::Dft2(x)))
    }

    pub fn idft2(&mut self, x: NodeId) -> Result<NodeId> {
        let v = spectral::idft2(self.value(x), spectral::Layout::Standard)?;
        Ok(self.push(v, Op::Idft2(x)))
    }

    pub fn fftshift(&mut self, x: NodeId) -> Result<NodeId> {
        let v = spectral::fftshift2(self.value(x))?;
        Ok(self.push(v, Op::Fftshift(x)))
    }

    pub fn ifftshift(&mut self, x: NodeId) -> Result<NodeId> {
        let v = spectral::ifftshift2(self.value(x))?;
        Ok(self.push(v, Op::Ifftshift(x)))
    }

    pub fn truncate_band(&mut self, x: NodeId, k: usize) -> Result<NodeId> {
        let v = spectral::truncate_band(self.value(x), k)?;
        Ok(self.push(v, Op::TruncBand { x }))
    }

    pub fn pad_band(&mut self, b: NodeId, target: (usize, usize)) -> Result<NodeId> {
        let v = spectral::pad_band(self.value(b), target)?;
        Ok(self.push(v, Op::PadBand { b }))
    }

    pub fn band_from_half(&mut self, x: NodeId, k: usize, full_cols: usize) -> Result<NodeId> {
        let v = spectral::band_from_half(self.value(x), k, full_cols)?;
        Ok(self.push(v, Op::BandFromHalf { x, full_cols }))
    }

    pub fn half_from_band(&mut self, b: NodeId, n0: usize, full_cols: usize) -> Result<NodeId> {
        let v = spectral::half_from_band(self.value(b), n0, full_cols)?;
        Ok(self.push(v, Op::HalfFromBand { b }))
    }

    pub fn hermitian_extend(&mut self, h: NodeId, k: usize) -> Result<NodeId> {
        let v = hermitian_extend_forward(self.value(h), k)?;
        Ok(self.push(v, Op::HermitianExtend { h, k }))
    }

    pub fn hermitian_project(&mut self, b: NodeId) -> Result<NodeId> {
        let v = hermitian_project_forward(self.value(b))?;
        Ok(self.push(v, Op::HermitianProject(b)))
    }

    pub fn orbit_average(&mut self, b: NodeId, group: Group) -> Result<NodeId> {
        let v = orbit_average_forward(self.value(b), group)?;
        Ok(self.push(v, Op::OrbitAverage { b, group }))
    }

    /// Frequency-domain group mixing on centered odd bands.
    pub fn gspectral_mix(&mut self, x: NodeId, bank: NodeId, group: Group) -> Result<NodeId> {
        let v = gspectral_mix_forward(self.value(x), self.value(bank), group)?;
        Ok(self.push(v, Op::GSpectralMix { x, bank, group }))
    }

    pub fn concat0(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let tensors: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let v = Tensor::concat0(&tensors)?;
        Ok(self.push(v, Op::Concat0(parts.to_vec())))
    }

    pub fn slice0(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let v = self.value(x).slice0(start, len);
        self.push(v, Op::Slice0 { x, start, len })
    }

    pub fn sum_all(&mut self, a: NodeId) -> Result<NodeId> {
        let t = self.value(a);
        if !t.is_real() {
            return Err(Error::DtypeMismatch {
                op: "sum_all",
                expected: "real64",
                got: t.dtype().name(),
            });
        }
        let v = Tensor::scalar(t.data().iter().sum());
        Ok(self.push(v, Op::SumAll(a)))
    }

    /// Relative L2 distance to a constant target: |p - t|_2 / |t|_2.
    pub fn rel_l2(&mut self, pred: NodeId, target: Tensor) -> Result<NodeId> {
        let p = self.value(pred);
        if p.shape() != target.shape() || p.dtype() != target.dtype() {
            return Err(Error::ShapeMismatch {
                op: "rel_l2",
                lhs: p.shape().to_vec(),
                rhs: target.shape().to_vec(),
            });
        }
        let denom = target.norm2();
        if denom == 0.0 {
            return Err(Error::invalid("rel_l2: zero-norm target".to_string()));
        }
        let v = Tensor::scalar(p.sub(&target)?.norm2() / denom);
        Ok(self.push(v, Op::RelL2 { pred, target }))
    }

    /// Reverse sweep from a real scalar loss; gradients of parameter
    /// leaves accumulate into `params`.
    pub fn backward(&mut self, loss: NodeId, params: &mut Parameters) -> Result<()> {
        self.run_backward(loss)?;
        for node in &self.nodes {
            if let (Op::Param(pid), Some(g)) = (&node.op, &node.grad) {
                params.get_mut(*pid).grad.add_assign(g);
            }
        }
        Ok(())
    }

    /// Reverse sweep returning per-parameter gradients instead of mutating
    /// shared state; used by the batch-parallel trainer.
    pub fn backward_collect(&mut self, loss: NodeId) -> Result<Vec<(ParamId, Tensor)>> {
        self.run_backward(loss)?;
        let mut out = Vec::new();
        for node in &mut self.nodes {
            if let Op::Param(pid) = node.op {
                if let Some(g) = node.grad.take() {
                    out.push((pid, g));
                }
            }
        }
        Ok(out)
    }

    /// Reverse sweep seeded with an arbitrary cotangent at `node`; used to
    /// test adjoint consistency of the linear primitives.
    pub fn backward_seeded(&mut self, node: NodeId, cotangent: Tensor) -> Result<()> {
        if self.consumed {
            return Err(Error::BackwardConsumed);
        }
        self.consumed = true;
        let v = self.value(node);
        if v.shape() != cotangent.shape() || v.dtype() != cotangent.dtype() {
            return Err(Error::ShapeMismatch {
                op: "backward_seeded",
                lhs: v.shape().to_vec(),
                rhs: cotangent.shape().to_vec(),
            });
        }
        self.nodes[node.0].grad = Some(cotangent);
        self.sweep()
    }

    fn run_backward(&mut self, loss: NodeId) -> Result<()> {
        if self.consumed {
            return Err(Error::BackwardConsumed);
        }
        self.consumed = true;
        let lt = &self.nodes[loss.0].value;
        if !lt.is_real() || lt.numel() != 1 {
            return Err(Error::NonScalarLoss {
                dtype: lt.dtype().name(),
                shape: lt.shape().to_vec(),
            });
        }
        let seed_shape = lt.shape().to_vec();
        self.nodes[loss.0].grad = Some(Tensor::from_raw(Dtype::Real, &seed_shape, vec![1.0]));
        self.sweep()
    }

    fn sweep(&mut self) -> Result<()> {
        for i in (0..self.nodes.len()).rev() {
            let Some(g) = self.nodes[i].grad.clone() else {
                continue;
            };
            let op = self.nodes[i].op.clone();
            self.backward_op(&op, &g)?;
        }
        Ok(())
    }

    /// Name of the first op whose output is non-finite, if any.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.nodes
            .iter()
            .find(|n| !n.value.is_finite())
            .map(|n| n.op.name())
    }

    fn accumulate(&mut self, id: NodeId, delta: Tensor) {
        let node = &mut self.nodes[id.0];
        match &mut node.grad {
            Some(g) => g.add_assign(&delta),
            None => node.grad = Some(delta),
        }
    }

    fn backward_op(&mut self, op: &Op, g: &Tensor) -> Result<()> {
        match op {
            Op::Const | Op::Param(_) => {}
            Op::Add(a, b) => {
                self.accumulate(*a, g.clone());
                self.accumulate(*b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(*a, g.clone());
                self.accumulate(*b, g.neg());
            }
            Op::Scale(a, c) => {
                self.accumulate(*a, g.scale(*c));
            }
            Op::Hadamard(a, b) => {
                let da = g.hadamard(self.value(*b))?;
                let db = g.hadamard(self.value(*a))?;
                self.accumulate(*a, da);
                self.accumulate(*b, db);
            }
            Op::Gelu(a) => {
                let d = tensor::gelu_derivative(self.value(*a))?.hadamard(g)?;
                self.accumulate(*a, d);
            }
            Op::ContractChannels { x, w } => {
                let (dx, dw) = contract_backward(self.value(*x), self.value(*w), g)?;
                self.accumulate(*x, dx);
                self.accumulate(*w, dw);
            }
            Op::Lift { x, w, d_g } => {
                let gs = g.shape();
                let (d_z, n0, n1) = (gs[0], gs[2], gs[3]);
                let plane = n0 * n1 * g.dtype().lanes();
                let mut summed = Tensor::zeros(g.dtype(), &[d_z, n0, n1]);
                for z in 0..d_z {
                    for s in 0..*d_g {
                        let src = &g.data()[(z * d_g + s) * plane..(z * d_g + s + 1) * plane];
                        let dst = &mut summed.data_mut()[z * plane..(z + 1) * plane];
                        for (d, &v) in dst.iter_mut().zip(src) {
                            *d += v;
                        }
                    }
                }
                let (dx, dw) = contract_backward(self.value(*x), self.value(*w), &summed)?;
                self.accumulate(*x, dx);
                self.accumulate(*w, dw);
            }
            Op::Project { f, w } => {
                let mean = stab_mean(self.value(*f))?;
                let (dmean, dw) = contract_backward(&mean, self.value(*w), g)?;
                let df = stab_mean_backward(self.value(*f).shape(), &dmean);
                self.accumulate(*f, df);
                self.accumulate(*w, dw);
            }
            Op::Mean0Stack(f) => {
                let shape = self.value(*f).shape().to_vec();
                let df = stab_mean_backward(&shape, g);
                self.accumulate(*f, df);
            }
            Op::Gconv1x1 { f, w, group } => {
                let (df, dw) = gconv1x1_backward(self.value(*f), self.value(*w), g, *group)?;
                self.accumulate(*f, df);
                self.accumulate(*w, dw);
            }
            Op::ToComplex(a) => {
                self.accumulate(*a, g.real_part());
            }
            Op::RealPart(a) => {
                self.accumulate(*a, g.to_complex());
            }
            Op::Rdft2(x) => {
                let cols = *self.value(*x).shape().last().unwrap();
                let d = spectral::rdft2_adjoint(g, cols)?;
                self.accumulate(*x, d);
            }
            Op::Irdft2 { x } => {
                let h = *self.value(*x).shape().last().unwrap();
                let d = spectral::irdft2_adjoint(g, h)?;
                self.accumulate(*x, d);
            }
            Op::Dft2(x) => {
                let d = spectral::dft2_adjoint(g)?;
                self.accumulate(*x, d);
            }
            Op::Idft2(x) => {
                let d = spectral::idft2_adjoint(g)?;
                self.accumulate(*x, d);
            }
            Op::Fftshift(x) => {
                let d = spectral::ifftshift2(g)?;
                self.accumulate(*x, d);
            }
            Op::Ifftshift(x) => {
                let d = spectral::fftshift2(g)?;
                self.accumulate(*x, d);
            }
            Op::TruncBand { x } => {
                let xs = self.value(*x).shape();
                let (n0, n1) = (xs[xs.len() - 2], xs[xs.len() - 1]);
                let d = spectral::pad_band(g, (n0, n1))?;
                self.accumulate(*x, d);
            }
            Op::PadBand { b } => {
                let bs = self.value(*b).shape();
                let k = (bs[bs.len() - 1] + 1) / 2;
                let d = spectral::truncate_band(g, k)?;
                self.accumulate(*b, d);
            }
            Op::BandFromHalf { x, full_cols } => {
                let xs = self.value(*x).shape();
                let n0 = xs[xs.len() - 2];
                let d = spectral::band_from_half_adjoint(g, n0, *full_cols)?;
                self.accumulate(*x, d);
            }
            Op::HalfFromBand { b } => {
                let bs = self.value(*b).shape();
                let k = (bs[bs.len() - 1] + 1) / 2;
                let d = spectral::half_from_band_adjoint(g, k)?;
                self.accumulate(*b, d);
            }
            Op::HermitianExtend { h, k } => {
                let d = hermitian_extend_backward(g, *k);
                self.accumulate(*h, d);
            }
            Op::HermitianProject(b) => {
                // The projection is self-adjoint.
                let d = hermitian_project_forward(g)?;
                self.accumulate(*b, d);
            }
            Op::OrbitAverage { b, group } => {
                // Averaging over a permutation orbit is self-adjoint.
                let d = orbit_average_forward(g, *group)?;
                self.accumulate(*b, d);
            }
            Op::GSpectralMix { x, bank, group } => {
                let (dx, dbank) =
                    gspectral_mix_backward(self.value(*x), self.value(*bank), g, *group)?;
                self.accumulate(*x, dx);
                self.accumulate(*bank, dbank);
            }
            Op::Concat0(parts) => {
                let mut start = 0;
                for &p in parts {
                    let len = self.value(p).shape()[0];
                    let d = g.slice0(start, len);
                    self.accumulate(p, d);
                    start += len;
                }
            }
            Op::Slice0 { x, start, len } => {
                let xs = self.value(*x);
                let mut d = Tensor::zeros(xs.dtype(), xs.shape());
                let stride = numel_of(&xs.shape()[1..]) * xs.dtype().lanes();
                d.data_mut()[start * stride..(start + len) * stride].copy_from_slice(g.data());
                self.accumulate(*x, d);
            }
            Op::SumAll(a) => {
                let av = self.value(*a);
                let gv = g.real_at(0);
                let d = Tensor::from_real(av.shape(), vec![gv; av.numel()]);
                self.accumulate(*a, d);
            }
            Op::RelL2 { pred, target } => {
                let p = self.value(*pred);
                let resid = p.sub(target)?;
                let denom = target.norm2();
                let dist = resid.norm2();
                if dist > 0.0 {
                    let d = resid.scale(g.real_at(0) / (denom * dist));
                    self.accumulate(*pred, d);
                }
            }
        }
        Ok(())
    }
}

fn stab_mean(f: &Tensor) -> Result<Tensor> {
    let fs = f.shape();
    if fs.len() != 4 {
        return Err(Error::invalid(format!(
            "stabilizer mean expects (d_z, d_g, n, n), got {fs:?}"
        )));
    }
    let (d_z, d_g, n0, n1) = (fs[0], fs[1], fs[2], fs[3]);
    let plane = n0 * n1 * f.dtype().lanes();
    let mut out = Tensor::zeros(f.dtype(), &[d_z, n0, n1]);
    let inv = 1.0 / d_g as f64;
    for z in 0..d_z {
        let dst_range = z * plane..(z + 1) * plane;
        for s in 0..d_g {
            let src = &f.data()[(z * d_g + s) * plane..(z * d_g + s + 1) * plane];
            let dst = &mut out.data_mut()[dst_range.clone()];
            for (d, &v) in dst.iter_mut().zip(src) {
                *d += v * inv;
            }
        }
    }
    Ok(out)
}

fn stab_mean_backward(fshape: &[usize], g: &Tensor) -> Tensor {
    let (d_z, d_g, n0, n1) = (fshape[0], fshape[1], fshape[2], fshape[3]);
    let plane = n0 * n1 * g.dtype().lanes();
    let mut df = Tensor::zeros(g.dtype(), fshape);
    let inv = 1.0 / d_g as f64;
    for z in 0..d_z {
        let src = &g.data()[z * plane..(z + 1) * plane];
        for s in 0..d_g {
            let dst = &mut df.data_mut()[(z * d_g + s) * plane..(z * d_g + s + 1) * plane];
            for (d, &v) in dst.iter_mut().zip(src) {
                *d += v * inv;
            }
        }
    }
    df
}

/// Transposes of the channel contraction: dx = w^T g, dw[o, i] = <g_o, x_i>.
fn contract_backward(x: &Tensor, w: &Tensor, g: &Tensor) -> Result<(Tensor, Tensor)> {
    let c_out = w.shape()[0];
    let c_in = w.shape()[1];
    let spatial = numel_of(&x.shape()[1..]);
    let mut dw = Tensor::zeros(w.dtype(), w.shape());

    match (x.dtype(), w.dtype()) {
        (_, Dtype::Real) => {
            let lanes = x.dtype().lanes();
            let width = spatial * lanes;
            let mut dx = Tensor::zeros(x.dtype(), x.shape());
            for o in 0..c_out {
                let gslab = &g.data()[o * width..(o + 1) * width];
                for i in 0..c_in {
                    let wv = w.data()[o * c_in + i];
                    let mut acc = 0.0;
                    {
                        let xs = &x.data()[i * width..(i + 1) * width];
                        let dxs = &mut dx.data_mut()[i * width..(i + 1) * width];
                        for p in 0..width {
                            dxs[p] += wv * gslab[p];
                            acc += gslab[p] * xs[p];
                        }
                    }
                    dw.data_mut()[o * c_in + i] += acc;
                }
            }
            Ok((dx, dw))
        }
        _ => {
            // Complex weights: dx = conj(w)^T g, dw = <conj(x), g>.
            let xc = x.to_complex();
            let mut dxc = Tensor::zeros(Dtype::Complex, x.shape());
            for o in 0..c_out {
                for i in 0..c_in {
                    let wv = w.complex_at(o * c_in + i).conj();
                    let mut acc = C::new(0.0, 0.0);
                    for p in 0..spatial {
                        let gv = g.complex_at(o * spatial + p);
                        let cur = dxc.complex_at(i * spatial + p) + wv * gv;
                        dxc.set_complex(i * spatial + p, cur);
                        acc += xc.complex_at(i * spatial + p).conj() * gv;
                    }
                    let prev = dw.complex_at(o * c_in + i);
                    dw.set_complex(o * c_in + i, prev + acc);
                }
            }
            let dx = if x.is_real() { dxc.real_part() } else { dxc };
            Ok((dx, dw))
        }
    }
}

/// Canonical mixing index: the kernel slice feeding output slice t from
/// input slice s is compose(s, inverse(t)).
pub fn mix_index(group: Group, t: usize, s: usize) -> usize {
    let ti = stab_inverse(&Stab::from_index(group, t));
    stab_compose(&Stab::from_index(group, s), &ti)
        .expect("same group")
        .index()
}

fn gconv1x1_forward(f: &Tensor, w: &Tensor, group: Group) -> Result<Tensor> {
    let fs = f.shape();
    let ws = w.shape();
    let d_g = group.d_g();
    if fs.len() != 4 || ws.len() != 3 || fs[1] != d_g || ws[2] != d_g || ws[1] != fs[0] {
        return Err(Error::ShapeMismatch {
            op: "gconv_1x1",
            lhs: fs.to_vec(),
            rhs: ws.to_vec(),
        });
    }
    if !f.is_real() || !w.is_real() {
        return Err(Error::DtypeMismatch {
            op: "gconv_1x1",
            expected: "real64",
            got: "complex128",
        });
    }
    let (d_in, n0, n1) = (fs[0], fs[2], fs[3]);
    let d_out = ws[0];
    let plane = n0 * n1;
    let mut out = Tensor::zeros(Dtype::Real, &[d_out, d_g, n0, n1]);
    for t in 0..d_g {
        for s in 0..d_g {
            let m = mix_index(group, t, s);
            for l in 0..d_out {
                let dst_range = (l * d_g + t) * plane..(l * d_g + t + 1) * plane;
                for j in 0..d_in {
                    let wv = w.data()[(l * d_in + j) * d_g + m];
                    let src = &f.data()[(j * d_g + s) * plane..(j * d_g + s + 1) * plane];
                    let dst = &mut out.data_mut()[dst_range.clone()];
                    for (d, &v) in dst.iter_mut().zip(src) {
                        *d += wv * v;
                    }
                }
            }
        }
    }
    Ok(out)
}

fn gconv1x1_backward(
    f: &Tensor,
    w: &Tensor,
    g: &Tensor,
    group: Group,
) -> Result<(Tensor, Tensor)> {
    let fs = f.shape();
    let ws = w.shape();
    let d_g = group.d_g();
    let (d_in, n0, n1) = (fs[0], fs[2], fs[3]);
    let d_out = ws[0];
    let plane = n0 * n1;
    let mut df = Tensor::zeros(Dtype::Real, fs);
    let mut dw = Tensor::zeros(Dtype::Real, ws);
    for t in 0..d_g {
        for s in 0..d_g {
            let m = mix_index(group, t, s);
            for l in 0..d_out {
                let gslab = &g.data()[(l * d_g + t) * plane..(l * d_g + t + 1) * plane];
                for j in 0..d_in {
                    let wv = w.data()[(l * d_in + j) * d_g + m];
                    let mut acc = 0.0;
                    {
                        let fslab = &f.data()[(j * d_g + s) * plane..(j * d_g + s + 1) * plane];
                        let dfs =
                            &mut df.data_mut()[(j * d_g + s) * plane..(j * d_g + s + 1) * plane];
                        for p in 0..plane {
                            dfs[p] += wv * gslab[p];
                            acc += gslab[p] * fslab[p];
                        }
                    }
                    dw.data_mut()[(l * d_in + j) * d_g + m] += acc;
                }
            }
        }
    }
    Ok((df, dw))
}

/// Expand the stored non-negative-frequency half of a kernel band
/// ((..., 2k-1, k) complex) into the full Hermitian odd band. The zero
/// column is symmetrized against itself, so the result satisfies
/// B(xi) = conj(B(-xi)) exactly.
pub(crate) fn hermitian_extend_forward(h: &Tensor, k: usize) -> Result<Tensor> {
    let hs = h.shape();
    let bw = 2 * k - 1;
    if hs.len() < 2 || hs[hs.len() - 2] != bw || hs[hs.len() - 1] != k {
        return Err(Error::invalid(format!(
            "hermitian_extend expects (..., {bw}, {k}), got {hs:?}"
        )));
    }
    if h.is_real() {
        return Err(Error::DtypeMismatch {
            op: "hermitian_extend",
            expected: "complex128",
            got: "real64",
        });
    }
    let batch = numel_of(&hs[..hs.len() - 2]);
    let mut shape = hs.to_vec();
    let r = shape.len();
    shape[r - 1] = bw;
    let mut out = Tensor::zeros(Dtype::Complex, &shape);
    let src = h.data();
    let dst = out.data_mut();
    for bt in 0..batch {
        let hb = bt * bw * k * 2;
        let ob = bt * bw * bw * 2;
        for ia in 0..bw {
            let row = hb + ia * k * 2;
            let mirror = hb + (bw - 1 - ia) * k * 2;
            let orow = ob + ia * bw * 2;
            let omir = ob + (bw - 1 - ia) * bw * 2;
            // Zero column symmetrized against its own mirror.
            dst[orow + (k - 1) * 2] = 0.5 * (src[row] + src[mirror]);
            dst[orow + (k - 1) * 2 + 1] = 0.5 * (src[row + 1] - src[mirror + 1]);
            for b in 1..k {
                let re = src[row + 2 * b];
                let im = src[row + 2 * b + 1];
                dst[orow + (k - 1 + b) * 2] = re;
                dst[orow + (k - 1 + b) * 2 + 1] = im;
                dst[omir + (k - 1 - b) * 2] = re;
                dst[omir + (k - 1 - b) * 2 + 1] = -im;
            }
        }
    }
    Ok(out)
}

fn hermitian_extend_backward(g: &Tensor, k: usize) -> Tensor {
    let gs = g.shape();
    let bw = 2 * k - 1;
    let batch = numel_of(&gs[..gs.len() - 2]);
    let mut shape = gs.to_vec();
    let r = shape.len();
    shape[r - 1] = k;
    let mut out = Tensor::zeros(Dtype::Complex, &shape);
    let src = g.data();
    let dst = out.data_mut();
    for bt in 0..batch {
        let gb = bt * bw * bw * 2;
        let ob = bt * bw * k * 2;
        for ia in 0..bw {
            let grow = gb + ia * bw * 2;
            let gmir = gb + (bw - 1 - ia) * bw * 2;
            let orow = ob + ia * k * 2;
            dst[orow] = 0.5 * (src[grow + (k - 1) * 2] + src[gmir + (k - 1) * 2]);
            dst[orow + 1] = 0.5 * (src[grow + (k - 1) * 2 + 1] - src[gmir + (k - 1) * 2 + 1]);
            for b in 1..k {
                dst[orow + 2 * b] = src[grow + (k - 1 + b) * 2] + src[gmir + (k - 1 - b) * 2];
                dst[orow + 2 * b + 1] =
                    src[grow + (k - 1 + b) * 2 + 1] - src[gmir + (k - 1 - b) * 2 + 1];
            }
        }
    }
    out
}

/// Hermitian projection of a full centered odd band:
/// B'(xi) = (B(xi) + conj(B(-xi))) / 2. Idempotent and self-adjoint.
pub(crate) fn hermitian_project_forward(b: &Tensor) -> Result<Tensor> {
    let bs = b.shape();
    if bs.len() < 2 {
        return Err(Error::invalid("hermitian_project expects a band".to_string()));
    }
    let bw0 = bs[bs.len() - 2];
    let bw1 = bs[bs.len() - 1];
    if bw0 != bw1 || bw0 % 2 == 0 {
        return Err(Error::invalid(format!(
            "hermitian_project expects an odd square band, got {bw0}x{bw1}"
        )));
    }
    let bw = bw0;
    let batch = numel_of(&bs[..bs.len() - 2]);
    let mut out = Tensor::zeros(Dtype::Complex, bs);
    let bc = b.to_complex();
    for bt in 0..batch {
        let base = bt * bw * bw;
        for a in 0..bw {
            for c in 0..bw {
                let v = bc.complex_at(base + a * bw + c);
                let m = bc.complex_at(base + (bw - 1 - a) * bw + (bw - 1 - c)).conj();
                out.set_complex(base + a * bw + c, 0.5 * (v + m));
            }
        }
    }
    Ok(out)
}

/// Average of a band over the stabilizer orbit; exactly S_G-invariant.
pub(crate) fn orbit_average_forward(b: &Tensor, group: Group) -> Result<Tensor> {
    let mut acc = Tensor::zeros(b.dtype(), b.shape());
    for s in group.stabilizers() {
        acc.add_assign(&act_spectrum(&s, b)?);
    }
    Ok(acc.scale(1.0 / group.d_g() as f64))
}

/// Per-output-slice gather tables for the frequency-domain group mixing:
/// output slice t reads kernel entries at -(t.xi).
fn mix_tables(group: Group, bw: usize) -> Vec<Vec<usize>> {
    let c = (bw / 2) as i64;
    group
        .stabilizers()
        .iter()
        .map(|t| {
            let t_inv = stab_inverse(t);
            let mut table = vec![0usize; bw * bw];
            for ia in 0..bw {
                for ib in 0..bw {
                    let xi = (ia as i64 - c, ib as i64 - c);
                    // The forward point map of t is the source map of t^-1.
                    let (fa, fb) = centered_source(&t_inv, xi);
                    table[ia * bw + ib] = ((-fa + c) as usize) * bw + (-fb + c) as usize;
                }
            }
            table
        })
        .collect()
}

/// Frequency-domain group convolution core on centered odd bands:
/// out[l, t](xi) = sum_{j, s} bank[l, j, compose(s, t^-1)](-t.xi) x[j, s](xi).
fn gspectral_mix_forward(x: &Tensor, bank: &Tensor, group: Group) -> Result<Tensor> {
    let (d_in, d_out, d_g, bw) = check_mix_shapes(x, bank, group)?;
    let tables = mix_tables(group, bw);
    let nb = bw * bw;
    let mut out = Tensor::zeros(Dtype::Complex, &[d_out, d_g, bw, bw]);
    let xd = x.data();
    let kd = bank.data();
    for t in 0..d_g {
        let table = &tables[t];
        for s in 0..d_g {
            let m = mix_index(group, t, s);
            for l in 0..d_out {
                let od = (l * d_g + t) * nb * 2;
                let dst = &mut out.data_mut()[od..od + nb * 2];
                for j in 0..d_in {
                    let kb = ((l * d_in + j) * d_g + m) * nb * 2;
                    let kslab = &kd[kb..kb + nb * 2];
                    let xb = (j * d_g + s) * nb * 2;
                    let xslab = &xd[xb..xb + nb * 2];
                    for ((o, x2), &pe) in dst
                        .chunks_exact_mut(2)
                        .zip(xslab.chunks_exact(2))
                        .zip(table.iter())
                    {
                        let kr = kslab[pe * 2];
                        let ki = kslab[pe * 2 + 1];
                        o[0] += kr * x2[0] - ki * x2[1];
                        o[1] += kr * x2[1] + ki * x2[0];
                    }
                }
            }
        }
    }
    Ok(out)
}

fn gspectral_mix_backward(
    x: &Tensor,
    bank: &Tensor,
    g: &Tensor,
    group: Group,
) -> Result<(Tensor, Tensor)> {
    let (d_in, d_out, d_g, bw) = check_mix_shapes(x, bank, group)?;
    let tables = mix_tables(group, bw);
    let nb = bw * bw;
    let mut dx = Tensor::zeros(Dtype::Complex, x.shape());
    let mut dbank = Tensor::zeros(Dtype::Complex, bank.shape());
    let xd = x.data();
    let kd = bank.data();
    let gd = g.data();
    let dxd = dx.data_mut();
    let dkd = dbank.data_mut();
    for t in 0..d_g {
        let table = &tables[t];
        for s in 0..d_g {
            let m = mix_index(group, t, s);
            for l in 0..d_out {
                let ob = (l * d_g + t) * nb * 2;
                let gslab = &gd[ob..ob + nb * 2];
                for j in 0..d_in {
                    let kb = ((l * d_in + j) * d_g + m) * nb * 2;
                    let kslab = &kd[kb..kb + nb * 2];
                    let dkslab = &mut dkd[kb..kb + nb * 2];
                    let xb = (j * d_g + s) * nb * 2;
                    let xslab = &xd[xb..xb + nb * 2];
                    let dxslab = &mut dxd[xb..xb + nb * 2];
                    for ((((g2, x2), dx2), &pe), _) in gslab
                        .chunks_exact(2)
                        .zip(xslab.chunks_exact(2))
                        .zip(dxslab.chunks_exact_mut(2))
                        .zip(table.iter())
                        .zip(0..nb)
                    {
                        let kr = kslab[pe * 2];
                        let ki = kslab[pe * 2 + 1];
                        // dx += conj(k) * g
                        dx2[0] += kr * g2[0] + ki * g2[1];
                        dx2[1] += kr * g2[1] - ki * g2[0];
                        // dbank += conj(x) * g
                        dkslab[pe * 2] += x2[0] * g2[0] + x2[1] * g2[1];
                        dkslab[pe * 2 + 1] += x2[0] * g2[1] - x2[1] * g2[0];
                    }
                }
            }
        }
    }
    Ok((dx, dbank))
}

fn check_mix_shapes(
    x: &Tensor,
    bank: &Tensor,
    group: Group,
) -> Result<(usize, usize, usize, usize)> {
    let xs = x.shape();
    let ks = bank.shape();
    let d_g = group.d_g();
    let bad = || Error::ShapeMismatch {
        op: "gconv_freq",
        lhs: xs.to_vec(),
        rhs: ks.to_vec(),
    };
    if xs.len() != 4 || ks.len() != 5 {
        return Err(bad());
    }
    let (d_in, bw) = (xs[0], xs[2]);
    let d_out = ks[0];
    if xs[1] != d_g
        || ks[2] != d_g
        || ks[1] != d_in
        || xs[3] != bw
        || ks[3] != bw
        || ks[4] != bw
        || bw % 2 == 0
    {
        return Err(bad());
    }
    Ok((d_in, d_out, d_g, bw))
}

/// Maximum discrepancy between backward gradients and central finite
/// differences with eps = 1e-5; relative where magnitudes allow, absolute
/// below 1e-8.
pub fn grad_check<F>(mut f: F, params: &mut Parameters) -> Result<f64>
where
    F: FnMut(&Parameters, &mut Tape) -> Result<NodeId>,
{
    let eps = 1e-5;
    params.zero_grads();
    let mut tape = Tape::new();
    let loss = f(params, &mut tape)?;
    let loss_value = tape.value(loss).real_at(0);
    if !loss_value.is_finite() {
        let op = tape.first_non_finite().unwrap_or("loss");
        return Err(Error::NonFinite { op });
    }
    tape.backward(loss, params)?;

    let analytic: Vec<Tensor> = params.iter().map(|p| p.grad.clone()).collect();
    let mut worst = 0.0f64;

    for pi in 0..params.len() {
        for e in 0..analytic[pi].data().len() {
            let orig = params.get(ParamId(pi)).value.data()[e];

            params.get_mut(ParamId(pi)).value.data_mut()[e] = orig + eps;
            let plus = eval_loss(&mut f, params)?;
            params.get_mut(ParamId(pi)).value.data_mut()[e] = orig - eps;
            let minus = eval_loss(&mut f, params)?;
            params.get_mut(ParamId(pi)).value.data_mut()[e] = orig;

            let fd = (plus - minus) / (2.0 * eps);
            let ad = analytic[pi].data()[e];
            let scale = ad.abs().max(fd.abs());
            let err = if scale < 1e-8 {
                (ad - fd).abs()
            } else {
                (ad - fd).abs() / scale
            };
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

fn eval_loss<F>(f: &mut F, params: &Parameters) -> Result<f64>
where
    F: FnMut(&Parameters, &mut Tape) -> Result<NodeId>,
{
    let mut tape = Tape::new();
    let loss = f(params, &mut tape)?;
    let v = tape.value(loss).real_at(0);
    if !v.is_finite() {
        let op = tape.first_non_finite().unwrap_or("loss");
        return Err(Error::NonFinite { op });
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

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

    #[test]
    fn sum_of_param_gives_ones() {
        let mut rng = Rng::new(1);
        let mut params = Parameters::new();
        let pid = params.add(random_real(&[3, 4], &mut rng));
        let mut tape = Tape::new();
        let p = tape.param(&params, pid);
        let loss = tape.sum_all(p).unwrap();
        tape.backward(loss, &mut params).unwrap();
        for &g in params.get(pid).grad.data() {
            assert_eq!(g, 1.0);
        }
    }

    #[test]
    fn half_square_gives_param_back() {
        let mut rng = Rng::new(2);
        let mut params = Parameters::new();
        let pid = params.add(random_real(&[5], &mut rng));
        let mut tape = Tape::new();
        let p = tape.param(&params, pid);
        let sq = tape.hadamard(p, p).unwrap();
        let half = tape.scale(sq, 0.5);
        let loss = tape.sum_all(half).unwrap();
        tape.backward(loss, &mut params).unwrap();
        let diff: f64 = params
            .get(pid)
            .grad
            .data()
            .iter()
            .zip(params.get(pid).value.data())
            .map(|(g, v)| (g - v).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-14);
    }

    #[test]
    fn backward_twice_errors() {
        let mut params = Parameters::new();
        let pid = params.add(Tensor::scalar(1.0));
        let mut tape = Tape::new();
        let p = tape.param(&params, pid);
        let loss = tape.sum_all(p).unwrap();
        tape.backward(loss, &mut params).unwrap();
        let err = tape.backward(loss, &mut params).unwrap_err();
        assert!(matches!(err, Error::BackwardConsumed));
    }

    #[test]
    fn non_scalar_loss_errors() {
        let mut params = Parameters::new();
        let pid = params.add(Tensor::from_real(&[2], vec![1.0, 2.0]));
        let mut tape = Tape::new();
        let p = tape.param(&params, pid);
        let err = tape.backward(p, &mut params).unwrap_err();
        assert!(matches!(err, Error::NonScalarLoss { .. }));
    }

    /// Adjoint consistency <L x, y> = <x, L^T y> for every linear
    /// primitive, with inner products over paired reals.
    #[test]
    fn linear_primitives_have_exact_adjoints() {
        let n = 6;
        let h = spectral::half_cols(n);
        let k = 3;
        let bw = 2 * k - 1;
        let group = Group::P4m;
        let d_g = group.d_g();

        let mut rng = Rng::new(3);
        let w1x1 = random_real(&[2, 2, d_g], &mut rng);
        let bank = random_complex(&[2, 2, d_g, bw, bw], &mut rng);
        let wc = random_real(&[3, 2], &mut rng);
        let wp = random_real(&[2, 2], &mut rng);

        type ForwardFn = Box<dyn Fn(&mut Tape, NodeId) -> NodeId>;
        let cases: Vec<(&str, Vec<usize>, bool, ForwardFn)> = vec![
            ("rdft2", vec![2, n, n], true, Box::new(|t, x| t.rdft2(x).unwrap())),
            (
                "irdft2",
                vec![2, n, h],
                false,
                Box::new(move |t, x| t.irdft2(x, n).unwrap()),
            ),
            ("dft2", vec![n, n], false, Box::new(|t, x| t.dft2(x).unwrap())),
            ("idft2", vec![n, n], false, Box::new(|t, x| t.idft2(x).unwrap())),
            ("fftshift", vec![n, n], false, Box::new(|t, x| t.fftshift(x).unwrap())),
            ("ifftshift", vec![n, n], false, Box::new(|t, x| t.ifftshift(x).unwrap())),
            (
                "truncate_band",
                vec![n, n],
                false,
                Box::new(move |t, x| t.truncate_band(x, k).unwrap()),
            ),
            (
                "pad_band",
                vec![bw, bw],
                false,
                Box::new(move |t, x| t.pad_band(x, (n, n)).unwrap()),
            ),
            (
                "band_from_half",
                vec![n, h],
                false,
                Box::new(move |t, x| t.band_from_half(x, k, n).unwrap()),
            ),
            (
                "half_from_band",
                vec![bw, bw],
                false,
                Box::new(move |t, x| t.half_from_band(x, n, n).unwrap()),
            ),
            (
                "hermitian_extend",
                vec![bw, k],
                false,
                Box::new(move |t, x| t.hermitian_extend(x, k).unwrap()),
            ),
            (
                "hermitian_project",
                vec![bw, bw],
                false,
                Box::new(|t, x| t.hermitian_project(x).unwrap()),
            ),
            (
                "orbit_average",
                vec![bw, bw],
                false,
                Box::new(move |t, x| t.orbit_average(x, group).unwrap()),
            ),
            (
                "gconv_1x1",
                vec![2, d_g, n, n],
                true,
                Box::new(move |t, x| {
                    let w = t.constant(w1x1.clone());
                    t.gconv_1x1(x, w, group).unwrap()
                }),
            ),
            (
                "gspectral_mix",
                vec![2, d_g, bw, bw],
                false,
                Box::new(move |t, x| {
                    let b = t.constant(bank.clone());
                    t.gspectral_mix(x, b, group).unwrap()
                }),
            ),
            (
                "contract_channels",
                vec![2, n, n],
                true,
                Box::new(move |t, x| {
                    let w = t.constant(wc.clone());
                    t.contract_channels(x, w).unwrap()
                }),
            ),
            (
                "lift",
                vec![2, n, n],
                true,
                Box::new(move |t, x| {
                    let w = t.constant(wp.clone());
                    t.lift(x, w, d_g).unwrap()
                }),
            ),
            (
                "stab_mean",
                vec![2, d_g, n, n],
                true,
                Box::new(|t, x| t.stab_mean(x).unwrap()),
            ),
            ("to_complex", vec![n, n], true, Box::new(|t, x| t.to_complex(x))),
            ("real_part", vec![n, n], false, Box::new(|t, x| t.real_part(x))),
        ];

        let mut rng2 = Rng::new(4);
        for (name, in_shape, in_real, fwd) in cases {
            let xin = if in_real {
                random_real(&in_shape, &mut rng2)
            } else {
                random_complex(&in_shape, &mut rng2)
            };
            let mut params = Parameters::new();
            let pid = params.add(xin.clone());
            let mut tape = Tape::new();
            let xnode = tape.param(&params, pid);
            let ynode = fwd(&mut tape, xnode);
            let y = tape.value(ynode).clone();
            let cot = if y.is_real() {
                random_real(y.shape(), &mut rng2)
            } else {
                random_complex(y.shape(), &mut rng2)
            };
            let lhs = y.dot(&cot);
            tape.backward_seeded(ynode, cot).unwrap();
            let dx = tape.grad(xnode).expect("input gradient");
            let rhs = xin.dot(dx);
            assert!(
                (lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0),
                "{name}: <Lx,y> = {lhs}, <x,L^T y> = {rhs}"
            );
        }
    }

    #[test]
    fn grad_check_identity_contract_is_tight() {
        let mut rng = Rng::new(5);
        let mut params = Parameters::new();
        let n = 4;
        let vals: Vec<f64> = (0..2 * n).map(|_| rng.uniform(-0.5, 0.5)).collect();
        let pid = params.add(Tensor::from_real(&[2, n], vals));
        let eye = {
            let mut w = Tensor::zeros(Dtype::Real, &[2, 2]);
            w.set_real(0, 1.0);
            w.set_real(3, 1.0);
            w
        };
        let err = grad_check(
            |ps, tape| {
                let xn = tape.param(ps, pid);
                let wn = tape.constant(eye.clone());
                let y = tape.contract_channels(xn, wn)?;
                tape.sum_all(y)
            },
            &mut params,
        )
        .unwrap();
        assert!(err < 1e-10, "err = {err}");
    }

    #[test]
    fn grad_check_gelu_sum() {
        let mut rng = Rng::new(6);
        let mut params = Parameters::new();
        let pid = params.add(random_real(&[7], &mut rng));
        let err = grad_check(
            |ps, tape| {
                let p = tape.param(ps, pid);
                let y = tape.gelu(p)?;
                tape.sum_all(y)
            },
            &mut params,
        )
        .unwrap();
        assert!(err < 1e-6, "err = {err}");
    }

    #[test]
    fn grad_check_through_spectral_round_trip() {
        let mut rng = Rng::new(7);
        let n = 4;
        let k = 2;
        let mut params = Parameters::new();
        let pid = params.add(random_real(&[1, n, n], &mut rng));
        let target = random_real(&[1, n, n], &mut rng);
        let err = grad_check(
            |ps, tape| {
                let p = tape.param(ps, pid);
                let spec = tape.rdft2(p)?;
                let band = tape.band_from_half(spec, k, n)?;
                let half = tape.half_from_band(band, n, n)?;
                let back = tape.irdft2(half, n)?;
                tape.rel_l2(back, target.clone())
            },
            &mut params,
        )
        .unwrap();
        assert!(err < 1e-6, "err = {err}");
    }

    #[test]
    fn grad_check_complex_bank_through_mix() {
        let mut rng = Rng::new(8);
        let group = Group::P4;
        let d_g = group.d_g();
        let k = 2;
        let bw = 2 * k - 1;
        let n = 5;
        let x = random_real(&[1, d_g, n, n], &mut rng);
        let target = random_real(&[1, d_g, n, n], &mut rng);
        let mut params = Parameters::new();
        let bank_h = params.add(random_complex(&[1, 1, d_g, bw, k], &mut rng));
        let err = grad_check(
            |ps, tape| {
                let xn = tape.constant(x.clone());
                let spec = tape.rdft2(xn)?;
                let band = tape.band_from_half(spec, k, n)?;
                let hb = tape.param(ps, bank_h);
                let bank = tape.hermitian_extend(hb, k)?;
                let mixed = tape.gspectral_mix(band, bank, group)?;
                let half = tape.half_from_band(mixed, n, n)?;
                let out = tape.irdft2(half, n)?;
                tape.rel_l2(out, target.clone())
            },
            &mut params,
        )
        .unwrap();
        assert!(err < 1e-6, "err = {err}");
    }

    #[test]
    fn hermitian_extend_yields_real_inverse_transforms() {
        let mut rng = Rng::new(9);
        let k = 3;
        let bw = 2 * k - 1;
        let n = 8;
        let half = random_complex(&[bw, k], &mut rng);
        let band = hermitian_extend_forward(&half, k).unwrap();
        // Hermitian entry-wise.
        for a in 0..bw {
            for b in 0..bw {
                let v = band.complex_at(a * bw + b);
                let m = band.complex_at((bw - 1 - a) * bw + (bw - 1 - b)).conj();
                assert!((v - m).norm() < 1e-15);
            }
        }
        let field = spectral::idft2(
            &spectral::pad_band(&band, (n, n)).unwrap(),
            spectral::Layout::Centered,
        )
        .unwrap();
        assert!(field.max_imag_abs() < 1e-12);
    }

    #[test]
    fn hermitian_project_matches_worked_example_and_is_idempotent() {
        // R(1,0) = 2+i and R(-1,0) = 4-3i project to 3+2i and 3-2i.
        let k = 2;
        let bw = 2 * k - 1;
        let mut band = Tensor::zeros(Dtype::Complex, &[bw, bw]);
        // centered (1, 0) -> array (2, 1); centered (-1, 0) -> array (0, 1).
        band.set_complex(2 * bw + 1, C::new(2.0, 1.0));
        band.set_complex(1, C::new(4.0, -3.0));
        let proj = hermitian_project_forward(&band).unwrap();
        assert!((proj.complex_at(2 * bw + 1) - C::new(3.0, 2.0)).norm() < 1e-15);
        assert!((proj.complex_at(1) - C::new(3.0, -2.0)).norm() < 1e-15);
        let twice = hermitian_project_forward(&proj).unwrap();
        assert!(twice.sub(&proj).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn nan_is_reported_with_op_name() {
        let mut params = Parameters::new();
        let pid = params.add(Tensor::scalar(-1.0));
        let err = grad_check(
            |ps, tape| {
                let p = tape.param(ps, pid);
                let inf = tape.scale(p, f64::INFINITY);
                let zero = tape.scale(inf, 0.0);
                tape.sum_all(zero)
            },
            &mut params,
        )
        .unwrap_err();
        match err {
            Error::NonFinite { op } => assert_eq!(op, "scale"),
            other => panic!("unexpected error {other}"),
        }
    }
}
