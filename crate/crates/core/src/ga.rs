//! Reference forward/backward kernel for the global-aware attention block.
//!
//! Channel attention pools each channel to its spatial mean, passes the
//! pooled vector through a bottleneck (`C -> C/r -> C`, rectifier between,
//! sigmoid after) and rescales every channel by the result. Spatial
//! attention takes the channel mean at each position, applies a sigmoid and
//! rescales every position. The global-aware module is spatial after
//! channel attention; the residual block applies it to the output of two
//! 3x3 convolutions before the skip addition.
//!
//! Feature maps on disk: magic `RGKT`, then channels, height, width as
//! little-endian `u32`, then channel-major little-endian `f32` values.

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{dim_u32, read_f32_body};

const TENSOR_MAGIC: &[u8; 4] = b"RGKT";

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Dense `channels × height × width` tensor, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::argument("feature map dimensions must be positive"));
        }
        if data.len() != channels * height * width {
            return Err(Error::shape(format!(
                "{} values for {channels}x{height}x{width}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::argument("feature map values must be finite"));
        }
        Ok(Self { channels, height, width, data })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Result<Self> {
        Self::new(channels, height, width, vec![0.0; channels * height * width])
    }

    pub fn random(channels: usize, height: usize, width: usize, rng: &mut impl Rng, scale: f64) -> Self {
        let data = (0..channels * height * width).map(|_| rng.gen_range(-scale..=scale)).collect();
        Self { channels, height, width, data }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    fn plane_len(&self) -> usize {
        self.height * self.width
    }

    fn with_data(&self, data: Vec<f64>) -> Self {
        Self { data, ..*self }
    }

    /// Copy with new values; finite-difference probes use this.
    pub fn replace_data(&self, data: Vec<f64>) -> Result<Self> {
        Self::new(self.channels, self.height, self.width, data)
    }

    pub fn write_raw(&self, mut w: impl Write) -> Result<()> {
        let mut header = Vec::with_capacity(16);
        header.extend_from_slice(TENSOR_MAGIC);
        for d in [self.channels, self.height, self.width] {
            header.extend_from_slice(&dim_u32(d)?.to_le_bytes());
        }
        w.write_all(&header)?;
        let mut body = Vec::with_capacity(self.data.len() * 4);
        for &v in &self.data {
            body.extend_from_slice(&(v as f32).to_le_bytes());
        }
        w.write_all(&body)?;
        Ok(())
    }

    pub fn read_raw(mut r: impl Read) -> Result<Self> {
        let mut header = [0u8; 16];
        r.read_exact(&mut header)?;
        if &header[..4] != TENSOR_MAGIC {
            return Err(Error::Format("missing RGKT magic".into()));
        }
        let dim = |k: usize| u32::from_le_bytes(header[4 + 4 * k..8 + 4 * k].try_into().unwrap()) as usize;
        let (c, h, w) = (dim(0), dim(1), dim(2));
        let data = read_f32_body(&mut r, c.saturating_mul(h).saturating_mul(w))?;
        Self::new(c, h, w, data)
    }

    fn check_shape(&self, other: &FeatureMap, what: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(format!("{what}: {:?} vs {:?}", self.shape(), other.shape())));
        }
        Ok(())
    }
}

/// Weights of the channel-attention bottleneck. `w1` is `(C/r) × C`,
/// `w2` is `C × (C/r)`, both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GaParams {
    pub channels: usize,
    pub reduction: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl GaParams {
    pub fn zeros(channels: usize, reduction: usize) -> Result<Self> {
        if channels == 0 || reduction == 0 || channels % reduction != 0 {
            return Err(Error::argument(format!(
                "reduction {reduction} must divide channel count {channels}"
            )));
        }
        let hidden = channels / reduction;
        Ok(Self {
            channels,
            reduction,
            w1: vec![0.0; hidden * channels],
            b1: vec![0.0; hidden],
            w2: vec![0.0; channels * hidden],
            b2: vec![0.0; channels],
        })
    }

    /// Uniform draws in `[-scale, scale]`.
    pub fn random(channels: usize, reduction: usize, rng: &mut impl Rng, scale: f64) -> Result<Self> {
        let mut p = Self::zeros(channels, reduction)?;
        for v in p.values_mut() {
            *v = rng.gen_range(-scale..=scale);
        }
        Ok(p)
    }

    pub fn hidden(&self) -> usize {
        self.channels / self.reduction
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hidden();
        if self.channels % self.reduction != 0
            || self.w1.len() != h * self.channels
            || self.b1.len() != h
            || self.w2.len() != self.channels * h
            || self.b2.len() != self.channels
        {
            return Err(Error::shape("inconsistent channel-attention parameter shapes"));
        }
        Ok(())
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
    }

    /// All parameters in the order w1, b1, w2, b2.
    pub fn flatten(&self) -> Vec<f64> {
        [&self.w1[..], &self.b1, &self.w2, &self.b2].concat()
    }

    pub fn unflatten(&self, flat: &[f64]) -> Self {
        let mut p = self.clone();
        assert_eq!(flat.len(), self.flatten().len());
        for (dst, &src) in p.values_mut().zip(flat) {
            *dst = src;
        }
        p
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&GaParamsDoc::from(self)).expect("parameters always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: GaParamsDoc = serde_json::from_str(text)?;
        doc.try_into()
    }
}

/// Weight-file layout with matrices as nested rows.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GaParamsDoc {
    reduction: usize,
    w1: Vec<Vec<f64>>,
    b1: Vec<f64>,
    w2: Vec<Vec<f64>>,
    b2: Vec<f64>,
}

impl From<&GaParams> for GaParamsDoc {
    fn from(p: &GaParams) -> Self {
        Self {
            reduction: p.reduction,
            w1: p.w1.chunks(p.channels).map(<[f64]>::to_vec).collect(),
            b1: p.b1.clone(),
            w2: p.w2.chunks(p.hidden()).map(<[f64]>::to_vec).collect(),
            b2: p.b2.clone(),
        }
    }
}

impl TryFrom<GaParamsDoc> for GaParams {
    type Error = Error;

    fn try_from(doc: GaParamsDoc) -> Result<Self> {
        let channels = doc.b2.len();
        let p = GaParams {
            channels,
            reduction: doc.reduction,
            w1: doc.w1.concat(),
            b1: doc.b1,
            w2: doc.w2.concat(),
            b2: doc.b2,
        };
        if p.reduction == 0 || channels == 0 {
            return Err(Error::schema("reduction", "reduction and channel count must be positive"));
        }
        p.validate()
            .map_err(|e| Error::schema("weights", e.to_string()))?;
        Ok(p)
    }
}

/// Two 3x3 same-padded convolutions (`C -> C`) with a rectifier between.
/// Kernels are `[out][in][ky][kx]`, flattened.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBranchParams {
    pub channels: usize,
    pub conv1_w: Vec<f64>,
    pub conv1_b: Vec<f64>,
    pub conv2_w: Vec<f64>,
    pub conv2_b: Vec<f64>,
}

impl ResidualBranchParams {
    pub fn zeros(channels: usize) -> Self {
        Self {
            channels,
            conv1_w: vec![0.0; channels * channels * 9],
            conv1_b: vec![0.0; channels],
            conv2_w: vec![0.0; channels * channels * 9],
            conv2_b: vec![0.0; channels],
        }
    }

    pub fn random(channels: usize, rng: &mut impl Rng, scale: f64) -> Self {
        let mut p = Self::zeros(channels);
        for v in p.values_mut() {
            *v = rng.gen_range(-scale..=scale);
        }
        p
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.conv1_w
            .iter_mut()
            .chain(self.conv1_b.iter_mut())
            .chain(self.conv2_w.iter_mut())
            .chain(self.conv2_b.iter_mut())
    }

    pub fn flatten(&self) -> Vec<f64> {
        [&self.conv1_w[..], &self.conv1_b, &self.conv2_w, &self.conv2_b].concat()
    }

    pub fn unflatten(&self, flat: &[f64]) -> Self {
        let mut p = self.clone();
        assert_eq!(flat.len(), self.flatten().len());
        for (dst, &src) in p.values_mut().zip(flat) {
            *dst = src;
        }
        p
    }
}

fn check_params(v: &FeatureMap, p: &GaParams) -> Result<()> {
    p.validate()?;
    if p.channels != v.channels {
        return Err(Error::shape(format!(
            "parameters for {} channels, input has {}",
            p.channels, v.channels
        )));
    }
    Ok(())
}

/// Intermediates of the channel-attention bottleneck.
struct ChannelCache {
    pooled: Vec<f64>,
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    weights: Vec<f64>,
}

fn channel_forward(v: &FeatureMap, p: &GaParams) -> ChannelCache {
    let (c, hsz) = (v.channels, p.hidden());
    let plane = v.plane_len();
    let pooled: Vec<f64> = v
        .data
        .chunks(plane)
        .map(|ch| ch.iter().sum::<f64>() / plane as f64)
        .collect();
    let hidden_pre: Vec<f64> = (0..hsz)
        .map(|j| p.b1[j] + (0..c).map(|i| p.w1[j * c + i] * pooled[i]).sum::<f64>())
        .collect();
    let hidden: Vec<f64> = hidden_pre.iter().map(|&z| z.max(0.0)).collect();
    let weights = (0..c)
        .map(|i| sigmoid(p.b2[i] + (0..hsz).map(|j| p.w2[i * hsz + j] * hidden[j]).sum::<f64>()))
        .collect();
    ChannelCache {
        pooled,
        hidden_pre,
        hidden,
        weights,
    }
}

fn scale_channels(v: &FeatureMap, weights: &[f64]) -> FeatureMap {
    let plane = v.plane_len();
    let data = v
        .data
        .iter()
        .enumerate()
        .map(|(k, &x)| x * weights[k / plane])
        .collect();
    v.with_data(data)
}

/// Per-channel attention coefficients, each in (0, 1).
pub fn channel_weights(v: &FeatureMap, p: &GaParams) -> Result<Vec<f64>> {
    check_params(v, p)?;
    Ok(channel_forward(v, p).weights)
}

pub fn channel_attention(v: &FeatureMap, p: &GaParams) -> Result<FeatureMap> {
    let w = channel_weights(v, p)?;
    Ok(scale_channels(v, &w))
}

/// Spatial attention map: sigmoid of the channel mean at each position.
pub fn spatial_weights(v: &FeatureMap) -> Vec<f64> {
    let plane = v.plane_len();
    (0..plane)
        .map(|k| {
            let mean = (0..v.channels).map(|c| v.data[c * plane + k]).sum::<f64>() / v.channels as f64;
            sigmoid(mean)
        })
        .collect()
}

fn scale_positions(v: &FeatureMap, r: &[f64]) -> FeatureMap {
    let plane = v.plane_len();
    v.with_data(v.data.iter().enumerate().map(|(k, &x)| x * r[k % plane]).collect())
}

/// Parameter-free spatial attention.
pub fn spatial_attention(v: &FeatureMap) -> FeatureMap {
    scale_positions(v, &spatial_weights(v))
}

pub fn ga_module(v: &FeatureMap, p: &GaParams) -> Result<FeatureMap> {
    Ok(spatial_attention(&channel_attention(v, p)?))
}

/// Reverse-mode gradients of [`ga_module`]: returns the gradient with
/// respect to the input and to every parameter, given `upstream` =
/// dL/d(output).
pub fn ga_backward(v: &FeatureMap, p: &GaParams, upstream: &FeatureMap) -> Result<(FeatureMap, GaParams)> {
    check_params(v, p)?;
    v.check_shape(upstream, "upstream gradient")?;
    let (c, plane, hsz) = (v.channels, v.plane_len(), p.hidden());
    let cache = channel_forward(v, p);
    let vc = scale_channels(v, &cache.weights);
    let r = spatial_weights(&vc);

    // through spatial attention: out = vc * r, r = sigmoid(mean_c vc)
    let mut d_vc = vec![0.0; v.data.len()];
    for k in 0..plane {
        let mut dot = 0.0;
        for ch in 0..c {
            dot += upstream.data[ch * plane + k] * vc.data[ch * plane + k];
        }
        let dmean = dot * r[k] * (1.0 - r[k]) / c as f64;
        for ch in 0..c {
            d_vc[ch * plane + k] = upstream.data[ch * plane + k] * r[k] + dmean;
        }
    }

    // through channel scaling: vc = v * a_c
    let mut dv = vec![0.0; v.data.len()];
    let mut da = vec![0.0; c];
    for ch in 0..c {
        for k in 0..plane {
            let i = ch * plane + k;
            dv[i] = d_vc[i] * cache.weights[ch];
            da[ch] += d_vc[i] * v.data[i];
        }
    }

    let mut grad = GaParams::zeros(p.channels, p.reduction)?;
    let ds: Vec<f64> = (0..c).map(|i| da[i] * cache.weights[i] * (1.0 - cache.weights[i])).collect();
    let mut dh = vec![0.0; hsz];
    for i in 0..c {
        grad.b2[i] = ds[i];
        for j in 0..hsz {
            grad.w2[i * hsz + j] = ds[i] * cache.hidden[j];
            dh[j] += p.w2[i * hsz + j] * ds[i];
        }
    }
    let mut du = vec![0.0; c];
    for j in 0..hsz {
        let dz = if cache.hidden_pre[j] > 0.0 { dh[j] } else { 0.0 };
        grad.b1[j] = dz;
        for i in 0..c {
            grad.w1[j * c + i] = dz * cache.pooled[i];
            du[i] += p.w1[j * c + i] * dz;
        }
    }
    for ch in 0..c {
        let g = du[ch] / plane as f64;
        for k in 0..plane {
            dv[ch * plane + k] += g;
        }
    }
    Ok((v.with_data(dv), grad))
}

fn conv3x3(input: &FeatureMap, w: &[f64], b: &[f64]) -> FeatureMap {
    let (c, h, wd) = input.shape();
    let mut out = vec![0.0; c * h * wd];
    for o in 0..c {
        for y in 0..h {
            for x in 0..wd {
                let mut acc = b[o];
                for i in 0..c {
                    for ky in 0..3 {
                        let yy = y as i64 + ky as i64 - 1;
                        if yy < 0 || yy >= h as i64 {
                            continue;
                        }
                        for kx in 0..3 {
                            let xx = x as i64 + kx as i64 - 1;
                            if xx < 0 || xx >= wd as i64 {
                                continue;
                            }
                            acc += w[((o * c + i) * 3 + ky) * 3 + kx] * input.data[(i * h + yy as usize) * wd + xx as usize];
                        }
                    }
                }
                out[(o * h + y) * wd + x] = acc;
            }
        }
    }
    input.with_data(out)
}

/// Accumulates input, kernel and bias gradients of [`conv3x3`].
fn conv3x3_backward(input: &FeatureMap, w: &[f64], dout: &[f64], dinput: &mut [f64], dw: &mut [f64], db: &mut [f64]) {
    let (c, h, wd) = input.shape();
    for o in 0..c {
        for y in 0..h {
            for x in 0..wd {
                let g = dout[(o * h + y) * wd + x];
                if g == 0.0 {
                    continue;
                }
                db[o] += g;
                for i in 0..c {
                    for ky in 0..3 {
                        let yy = y as i64 + ky as i64 - 1;
                        if yy < 0 || yy >= h as i64 {
                            continue;
                        }
                        for kx in 0..3 {
                            let xx = x as i64 + kx as i64 - 1;
                            if xx < 0 || xx >= wd as i64 {
                                continue;
                            }
                            let wi = ((o * c + i) * 3 + ky) * 3 + kx;
                            let ii = (i * h + yy as usize) * wd + xx as usize;
                            dw[wi] += g * input.data[ii];
                            dinput[ii] += g * w[wi];
                        }
                    }
                }
            }
        }
    }
}

fn check_branch(v: &FeatureMap, branch: &ResidualBranchParams) -> Result<()> {
    let c = v.channels;
    if branch.channels != c
        || branch.conv1_w.len() != c * c * 9
        || branch.conv2_w.len() != c * c * 9
        || branch.conv1_b.len() != c
        || branch.conv2_b.len() != c
    {
        return Err(Error::shape(format!("residual branch parameters do not match {c} channels")));
    }
    Ok(())
}

struct BranchCache {
    pre1: FeatureMap,
    act1: FeatureMap,
    out: FeatureMap,
}

fn branch_forward(v: &FeatureMap, b: &ResidualBranchParams) -> BranchCache {
    let pre1 = conv3x3(v, &b.conv1_w, &b.conv1_b);
    let act1 = pre1.with_data(pre1.data.iter().map(|&z| z.max(0.0)).collect());
    let out = conv3x3(&act1, &b.conv2_w, &b.conv2_b);
    BranchCache { pre1, act1, out }
}

/// Residual branch output: conv, rectifier, conv.
pub fn residual_branch(v: &FeatureMap, branch: &ResidualBranchParams) -> Result<FeatureMap> {
    check_branch(v, branch)?;
    Ok(branch_forward(v, branch).out)
}

/// `relu(v + ga_module(branch(v)))`.
pub fn ga_resblock(v: &FeatureMap, p: &GaParams, branch: &ResidualBranchParams) -> Result<FeatureMap> {
    check_branch(v, branch)?;
    let res = ga_module(&branch_forward(v, branch).out, p)?;
    Ok(v.with_data(v.data.iter().zip(&res.data).map(|(a, b)| (a + b).max(0.0)).collect()))
}

#[derive(Debug, Clone)]
pub struct ResBlockGrads {
    pub input: FeatureMap,
    pub ga: GaParams,
    pub branch: ResidualBranchParams,
}

pub fn ga_resblock_backward(
    v: &FeatureMap,
    p: &GaParams,
    branch: &ResidualBranchParams,
    upstream: &FeatureMap,
) -> Result<ResBlockGrads> {
    check_branch(v, branch)?;
    v.check_shape(upstream, "upstream gradient")?;
    let cache = branch_forward(v, branch);
    let res = ga_module(&cache.out, p)?;
    let dsum: Vec<f64> = v
        .data
        .iter()
        .zip(&res.data)
        .zip(&upstream.data)
        .map(|((a, b), g)| if a + b > 0.0 { *g } else { 0.0 })
        .collect();
    let dsum_map = v.with_data(dsum.clone());
    let (d_branch_out, ga_grad) = ga_backward(&cache.out, p, &dsum_map)?;

    let mut grads = ResidualBranchParams::zeros(v.channels);
    let mut d_act1 = vec![0.0; v.data.len()];
    conv3x3_backward(&cache.act1, &branch.conv2_w, &d_branch_out.data, &mut d_act1, &mut grads.conv2_w, &mut grads.conv2_b);
    let d_pre1: Vec<f64> = d_act1
        .iter()
        .zip(&cache.pre1.data)
        .map(|(g, z)| if *z > 0.0 { *g } else { 0.0 })
        .collect();
    let mut dv = dsum;
    conv3x3_backward(v, &branch.conv1_w, &d_pre1, &mut dv, &mut grads.conv1_w, &mut grads.conv1_b);
    Ok(ResBlockGrads {
        input: v.with_data(dv),
        ga: ga_grad,
        branch: grads,
    })
}

/// Smallest distance of any rectifier input to its kink. Finite-difference
/// checks are only meaningful when this exceeds the probe step.
pub fn resblock_kink_margin(v: &FeatureMap, p: &GaParams, branch: &ResidualBranchParams) -> Result<f64> {
    check_branch(v, branch)?;
    check_params(v, p)?;
    let cache = branch_forward(v, branch);
    let ga_in = &cache.out;
    let ch = channel_forward(ga_in, p);
    let res = ga_module(ga_in, p)?;
    let sums = v.data.iter().zip(&res.data).map(|(a, b)| (a + b).abs());
    Ok(cache
        .pre1
        .data
        .iter()
        .map(|z| z.abs())
        .chain(ch.hidden_pre.iter().map(|z| z.abs()))
        .chain(sums)
        .fold(f64::INFINITY, f64::min))
}

/// Kink margin of the channel bottleneck alone (for [`ga_module`] checks).
pub fn module_kink_margin(v: &FeatureMap, p: &GaParams) -> Result<f64> {
    check_params(v, p)?;
    Ok(channel_forward(v, p)
        .hidden_pre
        .iter()
        .map(|z| z.abs())
        .fold(f64::INFINITY, f64::min))
}
