//! Full model assembly: the Mona-Swin encoder, a dual-stream CNN encoder,
//! per-scale fusion, frequency-aware decoder levels, the residual
//! estimator, and the end-to-end forward pass producing (T̂, R̂, N̂).

use crate::adapters::{SwinEncoder, SwinEncoderConfig};
use crate::attention::{window_partition, window_reverse, AttentionConfig, Daa, Ldaa};
use crate::error::{Error, Result};
use crate::frequency::{Gaflb, SigmaBounds};
use crate::nn::{Conv2d, Init, LayerNorm, Linear, ParamBuilder};
use crate::params::{ParamGroup, ParamStore, TuningMode};
use crate::tensor::Tensor;
use ndarray::{ArrayD, IxDyn};

/// Two aligned feature maps, one per stream (transmission / reflection).
#[derive(Clone)]
pub struct StreamPair {
    pub f_t: Tensor,
    pub f_r: Tensor,
}

impl StreamPair {
    pub fn new(f_t: Tensor, f_r: Tensor) -> Result<StreamPair> {
        if f_t.shape() != f_r.shape() {
            return Err(Error::invalid("stream pair shapes must match"));
        }
        Ok(StreamPair { f_t, f_r })
    }
}

/// Configuration for one decoder level.
#[derive(Debug, Clone)]
pub struct DecoderLevelConfig {
    pub channels: usize,
    pub window: (usize, usize),
    pub k: usize,
    pub heads: usize,
    pub n_agents: usize,
    pub sigma_bounds: SigmaBounds,
}

/// Dual-stream gated feed-forward: each stream's gate is computed from the
/// other stream's tokens. Output projections are zero-initialized so the
/// block starts as an exact no-op inside its residual connection.
struct DslpBlock {
    fc_t: Linear,
    fc_r: Linear,
    gate_t: Linear, // gate for the T stream, fed by R tokens
    gate_r: Linear,
    out_t: Linear,
    out_r: Linear,
}

impl DslpBlock {
    fn new(pb: &mut ParamBuilder, name: &str, c: usize, hidden: usize) -> DslpBlock {
        pb.scope(name, |pb| DslpBlock {
            fc_t: Linear::new(pb, "fc_t", c, hidden, Init::Kaiming),
            fc_r: Linear::new(pb, "fc_r", c, hidden, Init::Kaiming),
            gate_t: Linear::new(pb, "gate_t", c, hidden, Init::Kaiming),
            gate_r: Linear::new(pb, "gate_r", c, hidden, Init::Kaiming),
            out_t: Linear::new(pb, "out_t", hidden, c, Init::Zero),
            out_r: Linear::new(pb, "out_r", hidden, c, Init::Zero),
        })
    }

    /// `t`, `r`: (B, L, C) tokens.
    fn forward(&self, t: &Tensor, r: &Tensor) -> (Tensor, Tensor) {
        let ht = self.fc_t.forward(t).gelu().mul(&self.gate_t.forward(r).sigmoid());
        let hr = self.fc_r.forward(r).gelu().mul(&self.gate_r.forward(t).sigmoid());
        (self.out_t.forward(&ht), self.out_r.forward(&hr))
    }
}

/// One dual-stream dual-attention block: LN, DAA over per-stream windows
/// (streams stacked on the window axis), LDAA over cross-stream token
/// concatenation, residual sum, LN, gated feed-forward, residual add.
struct Ddib {
    window: (usize, usize),
    norm1: LayerNorm,
    daa: Daa,
    ldaa: Ldaa,
    norm2: LayerNorm,
    dslp: DslpBlock,
}

impl Ddib {
    fn new(pb: &mut ParamBuilder, name: &str, cfg: &DecoderLevelConfig) -> Ddib {
        let acfg = AttentionConfig {
            channels: cfg.channels,
            heads: cfg.heads,
            window: cfg.window,
            n_agents: cfg.n_agents,
        };
        pb.scope(name, |pb| Ddib {
            window: cfg.window,
            norm1: LayerNorm::new(pb, "norm1", cfg.channels),
            daa: Daa::new(pb, "daa", acfg, Init::Zero),
            ldaa: Ldaa::new(pb, "ldaa", acfg, Init::Zero),
            norm2: LayerNorm::new(pb, "norm2", cfg.channels),
            dslp: DslpBlock::new(pb, "dslp", cfg.channels, cfg.channels * 2),
        })
    }

    fn forward(&self, pair: &StreamPair) -> Result<StreamPair> {
        let (tok_t, grid) = window_partition(&pair.f_t, self.window)?;
        let (tok_r, _) = window_partition(&pair.f_r, self.window)?;
        let nw = grid.num_windows();
        let l = self.window.0 * self.window.1;

        let yt = self.norm1.forward(&tok_t);
        let yr = self.norm1.forward(&tok_r);

        // self attention: both streams' windows along the window axis
        let sa = self.daa.forward(&Tensor::concat(&[yt.clone(), yr.clone()], 0))?;
        let sa_t = window_reverse(&sa.slice_axis(0, 0, nw), &grid);
        let sa_r = window_reverse(&sa.slice_axis(0, nw, nw), &grid);

        // cross attention: streams concatenated inside every window
        let ca = self.ldaa.forward(&Tensor::concat(&[yt, yr], 1))?;
        let ca_t = window_reverse(&ca.slice_axis(1, 0, l), &grid);
        let ca_r = window_reverse(&ca.slice_axis(1, l, l), &grid);

        let f_t = pair.f_t.add(&sa_t).add(&ca_t);
        let f_r = pair.f_r.add(&sa_r).add(&ca_r);

        let (tok_t, grid) = window_partition(&f_t, self.window)?;
        let (tok_r, _) = window_partition(&f_r, self.window)?;
        let (dt, dr) = self
            .dslp
            .forward(&self.norm2.forward(&tok_t), &self.norm2.forward(&tok_r));
        StreamPair::new(
            f_t.add(&window_reverse(&dt, &grid)),
            f_r.add(&window_reverse(&dr, &grid)),
        )
    }
}

/// One decoder level: a shared G-AFLB enhances both streams against the
/// (resized) input image, then K DDIBs refine them.
pub struct DecoderLevel {
    pub cfg: DecoderLevelConfig,
    gaflb: Gaflb,
    ddibs: Vec<Ddib>,
}

impl DecoderLevel {
    pub fn new(pb: &mut ParamBuilder, name: &str, cfg: DecoderLevelConfig) -> DecoderLevel {
        assert!(cfg.k >= 1, "decoder level needs K >= 1");
        pb.scope(name, |pb| DecoderLevel {
            gaflb: pb.scope("gaflb", |pb| Gaflb::new(pb, cfg.channels, cfg.sigma_bounds)),
            ddibs: (0..cfg.k)
                .map(|i| Ddib::new(pb, &format!("ddib{i}"), &cfg))
                .collect(),
            cfg,
        })
    }

    /// `image`: (1, 3, h, w) at this level's resolution.
    pub fn forward(&self, pair: &StreamPair, image: &Tensor) -> Result<StreamPair> {
        let mut cur = StreamPair::new(
            self.gaflb.forward(&pair.f_t, image)?,
            self.gaflb.forward(&pair.f_r, image)?,
        )?;
        for ddib in &self.ddibs {
            cur = ddib.forward(&cur)?;
        }
        Ok(cur)
    }
}

/// Dual-stream CNN encoder: shared stem, then per scale a pair of branch
/// heads aligned with the Swin encoder's pyramid.
pub struct DualStreamEncoder {
    stem: Conv2d,
    branches: Vec<(Conv2d, Conv2d)>,
    downs: Vec<Conv2d>,
}

impl DualStreamEncoder {
    pub fn new(pb: &mut ParamBuilder, name: &str, channels: &[usize]) -> DualStreamEncoder {
        pb.scope(name, |pb| {
            let stem = Conv2d::new(pb, "stem", 3, channels[0], 3, 2, 1, 1, Init::Kaiming);
            let branches = channels
                .iter()
                .enumerate()
                .map(|(i, &c)| {
                    (
                        Conv2d::new(pb, &format!("t{i}"), c, c, 3, 1, 1, 1, Init::Kaiming),
                        Conv2d::new(pb, &format!("r{i}"), c, c, 3, 1, 1, 1, Init::Kaiming),
                    )
                })
                .collect();
            let downs = (0..channels.len() - 1)
                .map(|i| {
                    Conv2d::new(
                        pb,
                        &format!("down{i}"),
                        channels[i],
                        channels[i + 1],
                        3,
                        2,
                        1,
                        1,
                        Init::Kaiming,
                    )
                })
                .collect();
            DualStreamEncoder {
                stem,
                branches,
                downs,
            }
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Vec<StreamPair>> {
        let s = x.shape();
        if s.len() != 4 || s[1] != 3 {
            return Err(Error::invalid("encoder2 expects a (1, 3, H, W) image"));
        }
        let mut feat = self.stem.forward(x).gelu();
        let mut out = Vec::new();
        for (i, (bt, br)) in self.branches.iter().enumerate() {
            out.push(StreamPair::new(
                bt.forward(&feat).gelu(),
                br.forward(&feat).gelu(),
            )?);
            if i < self.downs.len() {
                feat = self.downs[i].forward(&feat).gelu();
            }
        }
        Ok(out)
    }
}

/// Residual estimator: concat(T̂, R̂, I) through one gated convolution
/// block. All-zero parameters give an all-zero output.
pub struct ResidualEstimator {
    conv_in: Conv2d,
    conv_out: Conv2d,
    hidden: usize,
}

impl ResidualEstimator {
    pub fn new(pb: &mut ParamBuilder, name: &str, hidden: usize) -> ResidualEstimator {
        pb.scope(name, |pb| ResidualEstimator {
            conv_in: Conv2d::new(pb, "conv_in", 9, 2 * hidden, 3, 1, 1, 1, Init::Kaiming),
            conv_out: Conv2d::new(pb, "conv_out", hidden, 3, 3, 1, 1, 1, Init::Zero),
            hidden,
        })
    }

    pub fn forward(&self, t_hat: &Tensor, r_hat: &Tensor, image: &Tensor) -> Result<Tensor> {
        if t_hat.shape() != r_hat.shape() || t_hat.shape() != image.shape() {
            return Err(Error::invalid("residual estimator inputs must align"));
        }
        let x = Tensor::concat(&[t_hat.clone(), r_hat.clone(), image.clone()], 1);
        let h = self.conv_in.forward(&x);
        let a = h.slice_axis(1, 0, self.hidden);
        let b = h.slice_axis(1, self.hidden, self.hidden);
        Ok(self.conv_out.forward(&a.gelu().mul(&b.sigmoid())))
    }
}

/// Whole-network configuration. The defaults are the desk-scale "tiny"
/// setup used throughout the test suite.
#[derive(Debug, Clone)]
pub struct NetworkConfig {
    pub encoder: SwinEncoderConfig,
    pub decoder_k: usize,
    pub decoder_heads: usize,
    pub decoder_window: usize,
    pub n_agents: usize,
    pub sigma_bounds: SigmaBounds,
    pub mode: TuningMode,
}

impl Default for NetworkConfig {
    fn default() -> NetworkConfig {
        NetworkConfig {
            encoder: SwinEncoderConfig::default(),
            decoder_k: 2,
            decoder_heads: 4,
            decoder_window: 8,
            n_agents: 4,
            sigma_bounds: SigmaBounds::default(),
            mode: TuningMode::Mona,
        }
    }
}

impl NetworkConfig {
    /// A small variant for tests that need many forward/backward passes.
    pub fn tiny() -> NetworkConfig {
        NetworkConfig {
            encoder: SwinEncoderConfig {
                channels: vec![8, 16],
                depths: vec![1, 1],
                heads: 2,
                window: 4,
                mlp_ratio: 2,
                n_agents: 4,
            },
            decoder_k: 1,
            decoder_heads: 2,
            decoder_window: 4,
            n_agents: 4,
            sigma_bounds: SigmaBounds::default(),
            mode: TuningMode::Mona,
        }
    }
}

/// Final network output, cropped back to the input dimensions.
pub struct GfrrnOutput {
    /// (1, 3, H, W), sigmoid-bounded to [0, 1]
    pub t_hat: Tensor,
    /// (1, 3, H, W), sigmoid-bounded to [0, 1]
    pub r_hat: Tensor,
    /// (1, 3, H, W), signed
    pub n_hat: Tensor,
}

/// The assembled network.
pub struct Gfrrn {
    pub cfg: NetworkConfig,
    encoder1: SwinEncoder,
    encoder2: DualStreamEncoder,
    fuse: Vec<(Conv2d, Conv2d)>,
    levels: Vec<DecoderLevel>,
    ups: Vec<(Conv2d, Conv2d)>,
    head_t: Conv2d,
    head_r: Conv2d,
    residual: ResidualEstimator,
}

impl Gfrrn {
    pub fn new(store: &mut ParamStore, cfg: NetworkConfig, seed: u64) -> Gfrrn {
        let mut pb = ParamBuilder::new(store, seed);
        pb.set_group(ParamGroup::Task);
        let encoder1 = SwinEncoder::new(&mut pb, "encoder1", cfg.encoder.clone(), cfg.mode);
        let channels = cfg.encoder.channels.clone();
        let encoder2 = DualStreamEncoder::new(&mut pb, "encoder2", &channels);
        let fuse = channels
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                (
                    Conv2d::new(&mut pb, &format!("fuse{i}.t"), 2 * c, c, 1, 1, 0, 1, Init::Kaiming),
                    Conv2d::new(&mut pb, &format!("fuse{i}.r"), 2 * c, c, 1, 1, 0, 1, Init::Kaiming),
                )
            })
            .collect();
        let levels = channels
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                DecoderLevel::new(
                    &mut pb,
                    &format!("decoder{i}"),
                    DecoderLevelConfig {
                        channels: c,
                        window: (cfg.decoder_window, cfg.decoder_window),
                        k: cfg.decoder_k,
                        heads: cfg.decoder_heads,
                        n_agents: cfg.n_agents,
                        sigma_bounds: cfg.sigma_bounds,
                    },
                )
            })
            .collect();
        let ups = (1..channels.len())
            .map(|i| {
                (
                    Conv2d::new(
                        &mut pb,
                        &format!("up{i}.t"),
                        channels[i],
                        channels[i - 1],
                        1,
                        1,
                        0,
                        1,
                        Init::Kaiming,
                    ),
                    Conv2d::new(
                        &mut pb,
                        &format!("up{i}.r"),
                        channels[i],
                        channels[i - 1],
                        1,
                        1,
                        0,
                        1,
                        Init::Kaiming,
                    ),
                )
            })
            .collect();
        // zero-init heads: outputs start at sigmoid(0) = 0.5 instead of
        // deep in the sigmoid tails where gradients vanish
        let head_t = Conv2d::new(&mut pb, "head_t", channels[0], 3, 3, 1, 1, 1, Init::Zero);
        let head_r = Conv2d::new(&mut pb, "head_r", channels[0], 3, 3, 1, 1, 1, Init::Zero);
        let residual = ResidualEstimator::new(&mut pb, "residual", 8);
        Gfrrn {
            cfg,
            encoder1,
            encoder2,
            fuse,
            levels,
            ups,
            head_t,
            head_r,
            residual,
        }
    }

    /// Encoders, fusion, and every decoder level except the finest; returns
    /// the stream pair that enters level 0, the padded input, and the
    /// original (H, W).
    fn decode_to_finest(&self, image: &Tensor) -> Result<(StreamPair, Tensor, (usize, usize))> {
        let s = image.shape();
        if s.len() != 4 || s[0] != 1 || s[1] != 3 {
            return Err(Error::invalid("gfrrn_forward expects a (1, 3, H, W) image"));
        }
        let (h, w) = (s[2], s[3]);
        if h < 4 || w < 4 {
            return Err(Error::invalid("input too small"));
        }
        // pad to a multiple of the deepest stride so the pyramids align
        let mult = 1 << self.cfg.encoder.channels.len();
        let ph = h.div_ceil(mult) * mult;
        let pw = w.div_ceil(mult) * mult;
        let x = image.pad_reflect2d(ph - h, pw - w);

        let feats1 = self.encoder1.forward(&x)?;
        let pairs2 = self.encoder2.forward(&x)?;

        // fuse per scale and per stream: concat + 1x1 projection
        let mut fused = Vec::new();
        for (i, (f1, p2)) in feats1.iter().zip(&pairs2).enumerate() {
            let (ft, fr) = (&self.fuse[i].0, &self.fuse[i].1);
            fused.push(StreamPair::new(
                ft.forward(&Tensor::concat(&[f1.clone(), p2.f_t.clone()], 1)),
                fr.forward(&Tensor::concat(&[f1.clone(), p2.f_r.clone()], 1)),
            )?);
        }

        // decode coarse -> fine with 2x upsampling between levels
        let n = fused.len();
        let mut pair = fused[n - 1].clone();
        for li in (1..n).rev() {
            let fs = pair.f_t.shape();
            let img_level = x.bilinear_resize(fs[2], fs[3]);
            pair = self.levels[li].forward(&pair, &img_level)?;
            let target = fused[li - 1].f_t.shape();
            let (ut, ur) = (&self.ups[li - 1].0, &self.ups[li - 1].1);
            pair = StreamPair::new(
                fused[li - 1]
                    .f_t
                    .add(&ut.forward(&pair.f_t.bilinear_resize(target[2], target[3]))),
                fused[li - 1]
                    .f_r
                    .add(&ur.forward(&pair.f_r.bilinear_resize(target[2], target[3]))),
            )?;
        }
        Ok((pair, x, (h, w)))
    }

    /// `image`: (1, 3, H, W) in [0, 1]. Outputs are cropped to (H, W).
    pub fn forward(&self, image: &Tensor) -> Result<GfrrnOutput> {
        let (pair, x, (h, w)) = self.decode_to_finest(image)?;
        let fs = pair.f_t.shape();
        let img_level = x.bilinear_resize(fs[2], fs[3]);
        let pair = self.levels[0].forward(&pair, &img_level)?;
        let (ph, pw) = (x.shape()[2], x.shape()[3]);

        let full_t = pair.f_t.bilinear_resize(ph, pw);
        let full_r = pair.f_r.bilinear_resize(ph, pw);
        let t_hat = self.head_t.forward(&full_t).sigmoid().crop2d(h, w);
        let r_hat = self.head_r.forward(&full_r).sigmoid().crop2d(h, w);
        let n_hat = self
            .residual
            .forward(&t_hat, &r_hat, &x.crop2d(h, w))?;
        Ok(GfrrnOutput { t_hat, r_hat, n_hat })
    }

    /// Per-window importance scores of the finest decoder level's first
    /// block, painted over the window footprints and resampled back to the
    /// input grid as a (1, 1, H, W) map. Scores live in (0, 2); 1 means
    /// "no reweighting".
    pub fn wie_importance_map(&self, image: &Tensor) -> Result<Tensor> {
        let (pair, x, (h, w)) = self.decode_to_finest(image)?;
        let fs = pair.f_t.shape();
        let img_level = x.bilinear_resize(fs[2], fs[3]);
        let level = &self.levels[0];
        // the transmission stream's features as the first DDIB sees them
        let f_t = level.gaflb.forward(&pair.f_t, &img_level)?;
        let ddib = &level.ddibs[0];
        let (tok, grid) = window_partition(&f_t, ddib.window)?;
        let scores = ddib.daa.scores(&ddib.norm1.forward(&tok));
        let sv = scores.value();
        let (nh, nw) = grid.counts;
        let (hw, ww) = grid.window;
        let mut map = ArrayD::zeros(IxDyn(&[1, 1, grid.padded.0, grid.padded.1]));
        for wi in 0..nh {
            for wj in 0..nw {
                let s = sv[[wi * nw + wj, 0]];
                for di in 0..hw {
                    for dj in 0..ww {
                        map[[0, 0, wi * hw + di, wj * ww + dj]] = s;
                    }
                }
            }
        }
        let map = Tensor::constant(map).crop2d(grid.origin.0, grid.origin.1);
        Ok(map.bilinear_resize(x.shape()[2], x.shape()[3]).crop2d(h, w))
    }
}
