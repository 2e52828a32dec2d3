//! The G-FNO model: Hermitian-constrained spectral kernel banks, the
//! frequency-domain group convolution, G-Fourier layers with residual and
//! G-MLP, lifting/projection, positional encodings, and the plain FNO and
//! radialFNO variants.
//!
//! Kernel banks store only the non-negative frequencies of the last axis
//! ((2k-1) x k complex per channel pair and stabilizer slice); a
//! differentiable Hermitian extension rebuilds the full odd band on every
//! forward pass, so activations stay real by construction and the
//! stabilizer action on the band remains a pure index permutation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, ParamId, Parameters, Tape};
use crate::error::{Error, Result};
use crate::group::Group;
use crate::io::{read_tensor, write_tensor};
use crate::rng::Rng;
use crate::tensor::{Dtype, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Gfno,
    Fno,
    RadialFno,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Gfno => "gfno",
            Variant::Fno => "fno",
            Variant::RadialFno => "radial-fno",
        }
    }

    pub fn parse(s: &str) -> Result<Variant> {
        match s {
            "gfno" => Ok(Variant::Gfno),
            "fno" => Ok(Variant::Fno),
            "radial-fno" => Ok(Variant::RadialFno),
            other => Err(Error::invalid(format!("unknown variant `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PosEnc {
    None,
    Symmetric,
    Cartesian,
}

impl PosEnc {
    pub fn name(self) -> &'static str {
        match self {
            PosEnc::None => "none",
            PosEnc::Symmetric => "symmetric",
            PosEnc::Cartesian => "cartesian",
        }
    }

    pub fn parse(s: &str) -> Result<PosEnc> {
        match s {
            "none" => Ok(PosEnc::None),
            "symmetric" => Ok(PosEnc::Symmetric),
            "cartesian" => Ok(PosEnc::Cartesian),
            other => Err(Error::invalid(format!(
                "unknown positional encoding `{other}`"
            ))),
        }
    }

    pub fn channels(self) -> usize {
        match self {
            PosEnc::None => 0,
            PosEnc::Symmetric => 1,
            PosEnc::Cartesian => 2,
        }
    }
}

pub fn parse_group(s: &str) -> Result<Group> {
    match s {
        "none" => Ok(Group::None),
        "p4" => Ok(Group::P4),
        "p4m" => Ok(Group::P4m),
        other => Err(Error::invalid(format!("unknown group `{other}`"))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub variant: Variant,
    pub group: Group,
    pub d_z: usize,
    pub k: usize,
    pub layers: usize,
    pub pos_enc: PosEnc,
    pub in_steps: usize,
}

#[derive(Serialize, Deserialize)]
struct ConfigRepr {
    variant: String,
    group: String,
    d_z: usize,
    k: usize,
    layers: usize,
    pos_enc: String,
    in_steps: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_z == 0 || self.k == 0 || self.layers == 0 || self.in_steps == 0 {
            return Err(Error::invalid(
                "model dimensions must be positive".to_string(),
            ));
        }
        match self.variant {
            Variant::Fno => {
                if self.group != Group::None {
                    return Err(Error::invalid(
                        "variant `fno` forces group `none`".to_string(),
                    ));
                }
            }
            Variant::Gfno | Variant::RadialFno => {
                if self.group == Group::None {
                    return Err(Error::invalid(format!(
                        "variant `{}` needs group p4 or p4m",
                        self.variant.name()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Stabilizer slices carried by the feature maps; plain FNO and
    /// radialFNO use planar features.
    pub fn d_g(&self) -> usize {
        match self.variant {
            Variant::Gfno => self.group.d_g(),
            Variant::Fno | Variant::RadialFno => 1,
        }
    }

    /// Group used for channel/stabilizer mixing inside layers.
    pub fn mix_group(&self) -> Group {
        match self.variant {
            Variant::Gfno => self.group,
            Variant::Fno | Variant::RadialFno => Group::None,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.in_steps + self.pos_enc.channels()
    }

    pub fn to_json(&self) -> String {
        let repr = ConfigRepr {
            variant: self.variant.name().to_string(),
            group: self.group.name().to_string(),
            d_z: self.d_z,
            k: self.k,
            layers: self.layers,
            pos_enc: self.pos_enc.name().to_string(),
            in_steps: self.in_steps,
        };
        serde_json::to_string_pretty(&repr).expect("config serializes")
    }

    pub fn from_json(s: &str) -> Result<ModelConfig> {
        let repr: ConfigRepr = serde_json::from_str(s)
            .map_err(|e| Error::invalid(format!("bad model config: {e}")))?;
        let cfg = ModelConfig {
            variant: Variant::parse(&repr.variant)?,
            group: parse_group(&repr.group)?,
            d_z: repr.d_z,
            k: repr.k,
            layers: repr.layers,
            pos_enc: PosEnc::parse(&repr.pos_enc)?,
            in_steps: repr.in_steps,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Positional encoding channels for an n x n grid.
///
/// Symmetric: one channel of center distances over n, invariant under
/// rotations/reflections about the grid center. Cartesian: two channels
/// of normalized coordinates (not rotation invariant; used only by the
/// non-equivariant baselines). None: zero channels.
pub fn pos_encoding(kind: PosEnc, n: usize) -> Tensor {
    match kind {
        PosEnc::None => Tensor::zeros(Dtype::Real, &[0, n, n]),
        PosEnc::Symmetric => {
            let c = (n as f64 - 1.0) / 2.0;
            let mut t = Tensor::zeros(Dtype::Real, &[1, n, n]);
            for i in 0..n {
                for j in 0..n {
                    let d = ((i as f64 - c).powi(2) + (j as f64 - c).powi(2)).sqrt() / n as f64;
                    t.set_real(i * n + j, d);
                }
            }
            t
        }
        PosEnc::Cartesian => {
            let mut t = Tensor::zeros(Dtype::Real, &[2, n, n]);
            for i in 0..n {
                for j in 0..n {
                    t.set_real(i * n + j, i as f64 / n as f64);
                    t.set_real(n * n + i * n + j, j as f64 / n as f64);
                }
            }
            t
        }
    }
}

/// Which transform feeds the spectral convolution: the real half-spectrum
/// path (default) or the full complex spectrum (debug path used by the
/// realness assertions).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectralPath {
    Half,
    Full,
}

struct LayerIds {
    bank: ParamId,
    w_res: ParamId,
    mlp_w1: ParamId,
    mlp_w2: ParamId,
}

pub struct GfnoModel {
    pub config: ModelConfig,
    pub params: Parameters,
    lift_w: ParamId,
    layers: Vec<LayerIds>,
    project_w: ParamId,
}

impl GfnoModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<GfnoModel> {
        config.validate()?;
        let mut rng = Rng::new(seed ^ 0x6f70_6572);
        let mut params = Parameters::new();
        let d_g = config.d_g();
        let d_z = config.d_z;
        let bw = 2 * config.k - 1;

        let uniform = |rng: &mut Rng, scale: f64, shape: &[usize]| {
            let n: usize = shape.iter().product();
            Tensor::from_real(shape, (0..n).map(|_| rng.uniform(-scale, scale)).collect())
        };
        let uniform_c = |rng: &mut Rng, scale: f64, shape: &[usize]| {
            let n: usize = shape.iter().product();
            let vals: Vec<num_complex::Complex64> = (0..n)
                .map(|_| {
                    num_complex::Complex64::new(
                        rng.uniform(-scale, scale),
                        rng.uniform(-scale, scale),
                    )
                })
                .collect();
            Tensor::from_complex(shape, vals)
        };

        let c_in = config.in_channels();
        let lift_w = params.add(uniform(&mut rng, 1.0 / (c_in as f64).sqrt(), &[d_z, c_in]));

        // Scales keep layer outputs O(1) at init: the spectral mix sums
        // d_z * d_g terms, the 1x1 convolutions sqrt-normalize.
        let bank_scale = 1.0 / (d_z * d_g) as f64;
        let w_scale = 1.0 / ((d_z * d_g) as f64).sqrt();
        let mut layers = Vec::with_capacity(config.layers);
        for _ in 0..config.layers {
            let bank = params.add(uniform_c(
                &mut rng,
                bank_scale,
                &[d_z, d_z, d_g, bw, config.k],
            ));
            let w_res = params.add(uniform(&mut rng, w_scale, &[d_z, d_z, d_g]));
            let mlp_w1 = params.add(uniform(&mut rng, w_scale, &[d_z, d_z, d_g]));
            let mlp_w2 = params.add(uniform(&mut rng, w_scale, &[d_z, d_z, d_g]));
            layers.push(LayerIds {
                bank,
                w_res,
                mlp_w1,
                mlp_w2,
            });
        }
        let project_w = params.add(uniform(&mut rng, 1.0 / (d_z as f64).sqrt(), &[1, d_z]));

        Ok(GfnoModel {
            config,
            params,
            lift_w,
            layers,
            project_w,
        })
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.lift_w];
        for l in &self.layers {
            ids.extend([l.bank, l.w_res, l.mlp_w1, l.mlp_w2]);
        }
        ids.push(self.project_w);
        ids
    }

    /// Real scalars across all parameters (complex entries count twice).
    pub fn param_count(&self) -> usize {
        self.params.scalar_count()
    }

    fn gconv_freq_node(
        &self,
        tape: &mut Tape,
        params: &Parameters,
        f: NodeId,
        bank_half: NodeId,
        n: usize,
        path: SpectralPath,
    ) -> Result<NodeId> {
        let _ = params;
        let k = self.config.k;
        let mix_group = self.config.mix_group();
        let mut bank = tape.hermitian_extend(bank_half, k)?;
        if self.config.variant == Variant::RadialFno {
            bank = tape.orbit_average(bank, self.config.group)?;
        }
        match path {
            SpectralPath::Half => {
                let spec = tape.rdft2(f)?;
                let band = tape.band_from_half(spec, k, n)?;
                let mixed = tape.gspectral_mix(band, bank, mix_group)?;
                let half = tape.half_from_band(mixed, n, n)?;
                tape.irdft2(half, n)
            }
            SpectralPath::Full => {
                let fc = tape.to_complex(f);
                let spec = tape.dft2(fc)?;
                let cent = tape.fftshift(spec)?;
                let band = tape.truncate_band(cent, k)?;
                let mixed = tape.gspectral_mix(band, bank, mix_group)?;
                let padded = tape.pad_band(mixed, (n, n))?;
                let std = tape.ifftshift(padded)?;
                let outc = tape.idft2(std)?;
                Ok(tape.real_part(outc))
            }
        }
    }

    /// Forward pass on a tape against an explicit parameter store (which
    /// must share this model's layout). Positional encoding, lift, L
    /// G-Fourier layers, projection to the next-step field; runs
    /// unchanged at any resolution n >= 2k-1.
    pub fn forward_with(
        &self,
        tape: &mut Tape,
        params: &Parameters,
        x: NodeId,
        path: SpectralPath,
    ) -> Result<NodeId> {
        let shape = tape.value(x).shape().to_vec();
        if shape.len() != 3 || shape[0] != self.config.in_steps || shape[1] != shape[2] {
            return Err(Error::invalid(format!(
                "model expects ({}, n, n) input, got {shape:?}",
                self.config.in_steps
            )));
        }
        let n = shape[1];
        if n < 2 * self.config.k - 1 {
            return Err(Error::invalid(format!(
                "grid {n} is smaller than the kernel band {}; use a smaller k",
                2 * self.config.k - 1
            )));
        }

        let full = if self.config.pos_enc.channels() > 0 {
            let enc = tape.constant(pos_encoding(self.config.pos_enc, n));
            tape.concat0(&[x, enc])?
        } else {
            x
        };
        let mix_group = self.config.mix_group();
        let lift_w = tape.param(params, self.lift_w);
        let mut f = tape.lift(full, lift_w, self.config.d_g())?;
        for ids in &self.layers {
            let bank_half = tape.param(params, ids.bank);
            let w_res = tape.param(params, ids.w_res);
            let w1 = tape.param(params, ids.mlp_w1);
            let w2 = tape.param(params, ids.mlp_w2);

            let residual = tape.gconv_1x1(f, w_res, mix_group)?;
            let spec_out = self.gconv_freq_node(tape, params, f, bank_half, n, path)?;
            let h = tape.gconv_1x1(spec_out, w1, mix_group)?;
            let h = tape.gelu(h)?;
            let h = tape.gconv_1x1(h, w2, mix_group)?;
            f = tape.add(residual, h)?;
        }
        let project_w = tape.param(params, self.project_w);
        tape.project(f, project_w)
    }

    /// Forward pass on a tape with this model's own parameters.
    pub fn forward(&self, tape: &mut Tape, x: NodeId, path: SpectralPath) -> Result<NodeId> {
        self.forward_with(tape, &self.params, x, path)
    }

    /// Inference-only forward pass.
    pub fn forward_tensor(&self, x: &Tensor, path: SpectralPath) -> Result<Tensor> {
        let mut tape = Tape::new();
        let xn = tape.constant(x.clone());
        let y = self.forward(&mut tape, xn, path)?;
        Ok(tape.value(y).clone())
    }

    /// Autoregressive rollout: slide the conditioning window with the
    /// model's own predictions for `steps` steps.
    pub fn rollout(&self, init_window: &Tensor, steps: usize) -> Result<Vec<Tensor>> {
        let t_in = self.config.in_steps;
        if init_window.shape()[0] != t_in {
            return Err(Error::invalid(format!(
                "rollout window has {} frames, model conditions on {t_in}",
                init_window.shape()[0]
            )));
        }
        let mut window = init_window.clone();
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            let next = self.forward_tensor(&window, SpectralPath::Half)?;
            window = if t_in == 1 {
                next.clone()
            } else {
                let tail = window.slice0(1, t_in - 1);
                Tensor::concat0(&[&tail, &next])?
            };
            out.push(next);
        }
        Ok(out)
    }

    /// Write the checkpoint: a JSON config plus one GFT tensor per
    /// parameter.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        let cfg_path = dir.join("config.json");
        std::fs::write(&cfg_path, self.config.to_json()).map_err(|e| Error::Io {
            path: cfg_path.clone(),
            source: e,
        })?;
        for (name, pid) in self.param_names() {
            write_tensor(&self.params.get(pid).value, dir.join(name))?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<GfnoModel> {
        let dir = dir.as_ref();
        let cfg_path = dir.join("config.json");
        let text = std::fs::read_to_string(&cfg_path).map_err(|e| Error::Io {
            path: cfg_path.clone(),
            source: e,
        })?;
        let config = ModelConfig::from_json(&text)?;
        let mut model = GfnoModel::new(config, 0)?;
        for (name, pid) in model.param_names() {
            let t = read_tensor(dir.join(&name))?;
            let expect = model.params.get(pid).value.shape().to_vec();
            if t.shape() != expect.as_slice() {
                return Err(Error::invalid(format!(
                    "checkpoint tensor {name} has shape {:?}, expected {expect:?}",
                    t.shape()
                )));
            }
            model.params.get_mut(pid).value = t;
        }
        Ok(model)
    }

    fn param_names(&self) -> Vec<(String, ParamId)> {
        let mut out = vec![("lift_w.gft".to_string(), self.lift_w)];
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("layer{i}_bank.gft"), l.bank));
            out.push((format!("layer{i}_w.gft"), l.w_res));
            out.push((format!("layer{i}_mlp1.gft"), l.mlp_w1));
            out.push((format!("layer{i}_mlp2.gft"), l.mlp_w2));
        }
        out.push(("project_w.gft".to_string(), self.project_w));
        out
    }
}

/// Expected parameter-scalar count for a config, without building it.
pub fn param_count(config: &ModelConfig) -> usize {
    let d_z = config.d_z;
    let d_g = config.d_g();
    let bw = 2 * config.k - 1;
    let per_layer = d_z * d_z * d_g * bw * config.k * 2 // complex bank
        + 3 * d_z * d_z * d_g; // residual 1x1 plus two MLP 1x1
    d_z * config.in_channels() + config.layers * per_layer + d_z
}

/// Hermitian projection of a full centered odd band (differentiable; the
/// optimizer sees the raw parameters through it).
pub fn hermitian_project(bank: &Tensor) -> Result<Tensor> {
    crate::autodiff::hermitian_project_forward(bank)
}

/// Orbit-average tie producing an exactly S_G-invariant band.
pub fn radial_tie(bank: &Tensor, group: Group) -> Result<Tensor> {
    crate::autodiff::orbit_average_forward(bank, group)
}

/// Plain-tensor frequency-domain group convolution with a full (already
/// Hermitian-projected) kernel band of width 2k-1.
pub fn gconv_freq(f: &Tensor, bank: &Tensor, group: Group, path: SpectralPath) -> Result<Tensor> {
    let bw = *bank
        .shape()
        .last()
        .ok_or_else(|| Error::invalid("empty bank".to_string()))?;
    let k = (bw + 1) / 2;
    let n = *f
        .shape()
        .last()
        .ok_or_else(|| Error::invalid("empty feature map".to_string()))?;
    if bw > n {
        return Err(Error::invalid(format!(
            "kernel band {bw} exceeds grid extent {n}"
        )));
    }
    let mut tape = Tape::new();
    let fnode = tape.constant(f.clone());
    let bank_n = tape.constant(bank.clone());
    let out = match path {
        SpectralPath::Half => {
            let spec = tape.rdft2(fnode)?;
            let band = tape.band_from_half(spec, k, n)?;
            let mixed = tape.gspectral_mix(band, bank_n, group)?;
            let half = tape.half_from_band(mixed, n, n)?;
            tape.irdft2(half, n)?
        }
        SpectralPath::Full => {
            let fc = tape.to_complex(fnode);
            let spec = tape.dft2(fc)?;
            let cent = tape.fftshift(spec)?;
            let band = tape.truncate_band(cent, k)?;
            let mixed = tape.gspectral_mix(band, bank_n, group)?;
            let padded = tape.pad_band(mixed, (n, n))?;
            let std = tape.ifftshift(padded)?;
            let outc = tape.idft2(std)?;
            tape.real_part(outc)
        }
    };
    Ok(tape.value(out).clone())
}

/// Full-spectrum variant returning the complex output before the real
/// part is taken, for realness assertions.
pub fn gconv_freq_complex_debug(f: &Tensor, bank: &Tensor, group: Group) -> Result<Tensor> {
    let bw = *bank.shape().last().unwrap();
    let k = (bw + 1) / 2;
    let n = *f.shape().last().unwrap();
    let mut tape = Tape::new();
    let fnode = tape.constant(f.clone());
    let bank_n = tape.constant(bank.clone());
    let fc = tape.to_complex(fnode);
    let spec = tape.dft2(fc)?;
    let cent = tape.fftshift(spec)?;
    let band = tape.truncate_band(cent, k)?;
    let mixed = tape.gspectral_mix(band, bank_n, group)?;
    let padded = tape.pad_band(mixed, (n, n))?;
    let std = tape.ifftshift(padded)?;
    let outc = tape.idft2(std)?;
    Ok(tape.value(outc).clone())
}

/// Plain-tensor 1x1 group convolution.
pub fn gconv_1x1(f: &Tensor, w: &Tensor, group: Group) -> Result<Tensor> {
    let mut tape = Tape::new();
    let fnode = tape.constant(f.clone());
    let wn = tape.constant(w.clone());
    let out = tape.gconv_1x1(fnode, wn, group)?;
    Ok(tape.value(out).clone())
}

/// Plain-tensor G-MLP: 1x1 conv, GeLU, 1x1 conv.
pub fn gmlp(f: &Tensor, w1: &Tensor, w2: &Tensor, group: Group) -> Result<Tensor> {
    let mut tape = Tape::new();
    let fnode = tape.constant(f.clone());
    let w1n = tape.constant(w1.clone());
    let w2n = tape.constant(w2.clone());
    let h = tape.gconv_1x1(fnode, w1n, group)?;
    let h = tape.gelu(h)?;
    let out = tape.gconv_1x1(h, w2n, group)?;
    Ok(tape.value(out).clone())
}

/// Plain-tensor G-Fourier layer: residual 1x1 plus G-MLP of the spectral
/// group convolution (the bank must already be Hermitian-projected).
pub fn gfourier_layer(
    f: &Tensor,
    bank: &Tensor,
    w_res: &Tensor,
    w1: &Tensor,
    w2: &Tensor,
    group: Group,
    path: SpectralPath,
) -> Result<Tensor> {
    let residual = gconv_1x1(f, w_res, group)?;
    let spec = gconv_freq(f, bank, group, path)?;
    let mlp = gmlp(&spec, w1, w2, group)?;
    residual.add(&mlp)
}

/// Plain-tensor lifting: identical channel contraction on every
/// stabilizer slice.
pub fn lift(x: &Tensor, w: &Tensor, d_g: usize) -> Result<Tensor> {
    let mut tape = Tape::new();
    let xn = tape.constant(x.clone());
    let wn = tape.constant(w.clone());
    let out = tape.lift(xn, wn, d_g)?;
    Ok(tape.value(out).clone())
}

/// Plain-tensor projection: stabilizer mean then channel contraction.
pub fn project(f: &Tensor, w: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let fnode = tape.constant(f.clone());
    let wn = tape.constant(w.clone());
    let out = tape.project(fnode, wn)?;
    Ok(tape.value(out).clone())
}
