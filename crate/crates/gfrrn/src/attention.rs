//! Window partitioning and the attention family: W-MSA baseline, dynamic
//! agent attention (DAA) and its layer-wise cross-stream variant (LDAA),
//! plus the window importance estimator (WIE) they share.

use crate::error::{Error, Result};
use crate::nn::{Init, Linear, ParamBuilder};
use crate::tensor::Tensor;

/// Shared attention hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct AttentionConfig {
    pub channels: usize,
    pub heads: usize,
    pub window: (usize, usize),
    pub n_agents: usize,
}

impl AttentionConfig {
    pub fn tokens_per_window(&self) -> usize {
        self.window.0 * self.window.1
    }

    pub fn head_dim(&self) -> usize {
        self.channels / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels % self.heads != 0 {
            return Err(Error::invalid("channels must be divisible by heads"));
        }
        if self.n_agents == 0 || self.n_agents > self.tokens_per_window() {
            return Err(Error::invalid("n_agents must be in [1, window tokens]"));
        }
        Ok(())
    }

    /// Agent pooling grid: the most square (gh, gw) with gh * gw = n_agents.
    pub fn agent_grid(&self) -> (usize, usize) {
        let mut gh = (self.n_agents as f64).sqrt() as usize;
        while gh > 1 && self.n_agents % gh != 0 {
            gh -= 1;
        }
        (gh.max(1), self.n_agents / gh.max(1))
    }
}

/// Bookkeeping to invert a window partition.
#[derive(Debug, Clone, Copy)]
pub struct WindowGrid {
    pub origin: (usize, usize),
    pub padded: (usize, usize),
    pub window: (usize, usize),
    pub counts: (usize, usize),
}

impl WindowGrid {
    pub fn num_windows(&self) -> usize {
        self.counts.0 * self.counts.1
    }
}

/// Split a (1, C, H, W) map into (N_w, L, C) windows, reflect-padding the
/// spatial dims up to window multiples.
pub fn window_partition(x: &Tensor, window: (usize, usize)) -> Result<(Tensor, WindowGrid)> {
    let s = x.shape();
    if s.len() != 4 || s[0] != 1 {
        return Err(Error::invalid("window_partition expects (1, C, H, W)"));
    }
    let (hw, ww) = window;
    if hw == 0 || ww == 0 {
        return Err(Error::invalid("window dims must be positive"));
    }
    let (c, h, w) = (s[1], s[2], s[3]);
    let ph = h.div_ceil(hw) * hw;
    let pw = w.div_ceil(ww) * ww;
    let padded = x.pad_reflect2d(ph - h, pw - w);
    let (nh, nw) = (ph / hw, pw / ww);
    let tokens = padded
        .reshape(&[c, nh, hw, nw, ww])
        .permute(&[1, 3, 2, 4, 0])
        .reshape(&[nh * nw, hw * ww, c]);
    Ok((
        tokens,
        WindowGrid {
            origin: (h, w),
            padded: (ph, pw),
            window,
            counts: (nh, nw),
        },
    ))
}

/// Inverse of `window_partition`; padding is cropped away.
pub fn window_reverse(tokens: &Tensor, grid: &WindowGrid) -> Tensor {
    let (nh, nw) = grid.counts;
    let (hw, ww) = grid.window;
    let c = tokens.shape()[2];
    tokens
        .reshape(&[nh, nw, hw, ww, c])
        .permute(&[4, 0, 2, 1, 3])
        .reshape(&[1, c, nh * hw, nw * ww])
        .crop2d(grid.origin.0, grid.origin.1)
}

fn split_heads(x: &Tensor, heads: usize) -> Tensor {
    let s = x.shape();
    let (b, l, c) = (s[0], s[1], s[2]);
    x.reshape(&[b, l, heads, c / heads]).permute(&[0, 2, 1, 3])
}

fn merge_heads(x: &Tensor) -> Tensor {
    let s = x.shape();
    let (b, h, l, d) = (s[0], s[1], s[2], s[3]);
    x.permute(&[0, 2, 1, 3]).reshape(&[b, l, h * d])
}

/// Window importance estimator: pooled query -> 2-layer perceptron ->
/// `2 * sigmoid`. The last layer is zero-initialized so every score starts
/// at exactly 1 and DAA initializes to plain agent attention.
pub struct Wie {
    fc1: Linear,
    fc2: Linear,
}

impl Wie {
    pub fn new(pb: &mut ParamBuilder, name: &str, channels: usize) -> Wie {
        pb.scope(name, |pb| Wie {
            fc1: Linear::new(pb, "fc1", channels, (channels / 4).max(1), Init::Kaiming),
            fc2: Linear::new(pb, "fc2", (channels / 4).max(1), 1, Init::Zero),
        })
    }

    /// `q`: (N_w, L, C) query windows; returns strictly-(0, 2) scores (N_w, 1).
    pub fn forward(&self, q: &Tensor) -> Tensor {
        let pooled = q.mean_axis_keep(1); // (N_w, 1, C) == global average pool
        let b = q.shape()[0];
        let c = q.shape()[2];
        let z = self.fc2.forward(&self.fc1.forward(&pooled.reshape(&[b, c])).gelu());
        z.sigmoid().scale(2.0)
    }
}

/// Pool query windows down to agent tokens: (N_w, L, C) -> (N_w, n_a, C).
fn agent_generate(q: &Tensor, window: (usize, usize), grid: (usize, usize)) -> Tensor {
    let s = q.shape();
    let (b, c) = (s[0], s[2]);
    let (hw, ww) = window;
    let (gh, gw) = grid;
    q.reshape(&[b, hw, ww, c])
        .permute(&[0, 3, 1, 2])
        .adaptive_avg_pool2d(gh, gw)
        .reshape(&[b, c, gh * gw])
        .permute(&[0, 2, 1])
}

/// Depthwise 3x3 over a window's spatial grid, applied to (B, L, C) tokens.
fn dwc_tokens(v: &Tensor, window: (usize, usize), weight: &Tensor, bias: &Tensor) -> Tensor {
    let s = v.shape();
    let (b, c) = (s[0], s[2]);
    let (hw, ww) = window;
    let grid = v.reshape(&[b, hw, ww, c]).permute(&[0, 3, 1, 2]);
    let conv = grid.conv2d(weight, Some(bias), 1, 1, c);
    conv.permute(&[0, 2, 3, 1]).reshape(&[b, hw * ww, c])
}

/// Dynamic agent attention over per-stream windows (the "dim 0" branch:
/// both streams' windows are stacked along the window axis).
pub struct Daa {
    pub cfg: AttentionConfig,
    qkv: Linear,
    out: Linear,
    wie: Wie,
    dwc_weight: Tensor,
    dwc_bias: Tensor,
    bias_agg: Tensor,
    bias_brd: Tensor,
}

impl Daa {
    pub fn new(pb: &mut ParamBuilder, name: &str, cfg: AttentionConfig, out_init: Init) -> Daa {
        cfg.validate().expect("invalid attention config");
        let c = cfg.channels;
        let l = cfg.tokens_per_window();
        let na = cfg.n_agents;
        pb.scope(name, |pb| Daa {
            cfg,
            qkv: Linear::new(pb, "qkv", c, 3 * c, Init::Kaiming),
            out: Linear::new(pb, "out", c, c, out_init),
            wie: Wie::new(pb, "wie", c),
            dwc_weight: pb.param("dwc.weight", &[c, 1, 3, 3], Init::Kaiming),
            dwc_bias: pb.param("dwc.bias", &[c], Init::Zero),
            bias_agg: pb.param("bias_agg", &[cfg.heads, na, l], Init::Zero),
            bias_brd: pb.param("bias_brd", &[cfg.heads, l, na], Init::Zero),
        })
    }

    /// WIE scores for the given input (used by the weight-inspection path).
    pub fn scores(&self, x: &Tensor) -> Tensor {
        let c = self.cfg.channels;
        let q = self.qkv.forward(x).slice_axis(2, 0, c);
        self.wie.forward(&q)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_impl(x, None)
    }

    /// Test hook: override the WIE scores (e.g. force them to 1 to reduce
    /// DAA to plain agent attention).
    pub fn forward_with_scores(&self, x: &Tensor, scores: &Tensor) -> Result<Tensor> {
        self.forward_impl(x, Some(scores))
    }

    fn forward_impl(&self, x: &Tensor, scores: Option<&Tensor>) -> Result<Tensor> {
        let s = x.shape();
        if s.len() != 3 || s[2] != self.cfg.channels {
            return Err(Error::invalid("daa_forward: expected (B, L, C) with matching C"));
        }
        let (b, l) = (s[0], s[1]);
        if l != self.cfg.tokens_per_window() {
            return Err(Error::invalid("daa_forward: token count != window area"));
        }
        let c = self.cfg.channels;
        let h = self.cfg.heads;
        let d = self.cfg.head_dim();
        let na = self.cfg.n_agents;

        let qkv = self.qkv.forward(x);
        let q = qkv.slice_axis(2, 0, c);
        let k = qkv.slice_axis(2, c, c);
        let v = qkv.slice_axis(2, 2 * c, c);

        let agents = agent_generate(&q, self.cfg.window, self.cfg.agent_grid());
        let score = match scores {
            Some(sc) => sc.reshape(&[b, 1, 1]),
            None => self.wie.forward(&q).reshape(&[b, 1, 1]),
        };
        let a_w = agents.mul(&score);

        let qh = split_heads(&q, h);
        let kh = split_heads(&k, h);
        let vh = split_heads(&v, h);
        let ah = split_heads(&a_w, h);

        let scale = 1.0 / (d as f64).sqrt();
        // agent aggregation: (B, h, n_a, L) attention onto V
        let attn_agg = ah
            .matmul(&kh.transpose_last())
            .scale(scale)
            .add(&self.bias_agg)
            .softmax_last();
        let v_a = attn_agg.matmul(&vh); // (B, h, n_a, d)
        // agent broadcast: (B, h, L, n_a) attention onto V_A
        let attn_brd = qh
            .matmul(&ah.transpose_last())
            .scale(scale)
            .add(&self.bias_brd)
            .softmax_last();
        let f_attn = merge_heads(&attn_brd.matmul(&v_a));

        let f_dwc = dwc_tokens(&v, self.cfg.window, &self.dwc_weight, &self.dwc_bias);
        let _ = na;
        Ok(self.out.forward(&f_attn.add(&f_dwc)))
    }
}

/// Layer-wise DAA: the two streams' tokens are concatenated inside each
/// window (the "dim 1" branch), agents are generated per stream, and one
/// averaged WIE score modulates the combined agents.
pub struct Ldaa {
    pub cfg: AttentionConfig,
    qkv: Linear,
    out: Linear,
    wie: Wie,
    dwc_weight: Tensor,
    dwc_bias: Tensor,
    bias_agg: Tensor,
    bias_brd: Tensor,
}

impl Ldaa {
    pub fn new(pb: &mut ParamBuilder, name: &str, cfg: AttentionConfig, out_init: Init) -> Ldaa {
        cfg.validate().expect("invalid attention config");
        let c = cfg.channels;
        let l2 = 2 * cfg.tokens_per_window();
        let na2 = 2 * cfg.n_agents;
        pb.scope(name, |pb| Ldaa {
            cfg,
            qkv: Linear::new(pb, "qkv", c, 3 * c, Init::Kaiming),
            out: Linear::new(pb, "out", c, c, out_init),
            wie: Wie::new(pb, "wie", c),
            dwc_weight: pb.param("dwc.weight", &[c, 1, 3, 3], Init::Kaiming),
            dwc_bias: pb.param("dwc.bias", &[c], Init::Zero),
            bias_agg: pb.param("bias_layered_agg", &[cfg.heads, na2, l2], Init::Zero),
            bias_brd: pb.param("bias_layered_brd", &[cfg.heads, l2, na2], Init::Zero),
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_impl(x, None)
    }

    /// Test hook: override the per-stream WIE scores before averaging.
    pub fn forward_with_scores(
        &self,
        x: &Tensor,
        score_t: &Tensor,
        score_r: &Tensor,
    ) -> Result<Tensor> {
        self.forward_impl(x, Some((score_t, score_r)))
    }

    fn forward_impl(&self, x: &Tensor, scores: Option<(&Tensor, &Tensor)>) -> Result<Tensor> {
        let s = x.shape();
        if s.len() != 3 || s[2] != self.cfg.channels {
            return Err(Error::invalid("ldaa_forward: expected (N_w, 2L, C)"));
        }
        let (b, l2) = (s[0], s[1]);
        if l2 % 2 != 0 {
            return Err(Error::invalid("ldaa_forward: odd token count, cannot split streams"));
        }
        let l = l2 / 2;
        if l != self.cfg.tokens_per_window() {
            return Err(Error::invalid("ldaa_forward: per-stream token count != window area"));
        }
        let c = self.cfg.channels;
        let h = self.cfg.heads;
        let d = self.cfg.head_dim();

        let qkv = self.qkv.forward(x);
        let q = qkv.slice_axis(2, 0, c);
        let k = qkv.slice_axis(2, c, c);
        let v = qkv.slice_axis(2, 2 * c, c);

        let q_t = q.slice_axis(1, 0, l);
        let q_r = q.slice_axis(1, l, l);
        let grid = self.cfg.agent_grid();
        let a_t = agent_generate(&q_t, self.cfg.window, grid);
        let a_r = agent_generate(&q_r, self.cfg.window, grid);
        let agents = Tensor::concat(&[a_t, a_r], 1); // (N_w, 2n_a, C)

        let score = match scores {
            Some((st, sr)) => st.add(sr).scale(0.5),
            None => {
                let st = self.wie.forward(&q_t);
                let sr = self.wie.forward(&q_r);
                st.add(&sr).scale(0.5)
            }
        };
        let a_w = agents.mul(&score.reshape(&[b, 1, 1]));

        let qh = split_heads(&q, h);
        let kh = split_heads(&k, h);
        let vh = split_heads(&v, h);
        let ah = split_heads(&a_w, h);

        let scale = 1.0 / (d as f64).sqrt();
        let attn_agg = ah
            .matmul(&kh.transpose_last())
            .scale(scale)
            .add(&self.bias_agg)
            .softmax_last();
        let v_a = attn_agg.matmul(&vh);
        let attn_brd = qh
            .matmul(&ah.transpose_last())
            .scale(scale)
            .add(&self.bias_brd)
            .softmax_last();
        let f_attn = merge_heads(&attn_brd.matmul(&v_a));

        let v_t = v.slice_axis(1, 0, l);
        let v_r = v.slice_axis(1, l, l);
        let d_t = dwc_tokens(&v_t, self.cfg.window, &self.dwc_weight, &self.dwc_bias);
        let d_r = dwc_tokens(&v_r, self.cfg.window, &self.dwc_weight, &self.dwc_bias);
        let f_dwc = Tensor::concat(&[d_t, d_r], 1);

        Ok(self.out.forward(&f_attn.add(&f_dwc)))
    }
}

/// Plain window-based multi-head self-attention (the ablation baseline and
/// the encoder block's attention).
pub struct Wmsa {
    pub cfg: AttentionConfig,
    qkv: Linear,
    out: Linear,
    bias: Tensor,
}

impl Wmsa {
    pub fn new(pb: &mut ParamBuilder, name: &str, cfg: AttentionConfig) -> Wmsa {
        cfg.validate().expect("invalid attention config");
        let c = cfg.channels;
        let l = cfg.tokens_per_window();
        pb.scope(name, |pb| Wmsa {
            cfg,
            qkv: Linear::new(pb, "qkv", c, 3 * c, Init::Kaiming),
            out: Linear::new(pb, "out", c, c, Init::Kaiming),
            bias: pb.param("bias", &[cfg.heads, l, l], Init::Zero),
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let s = x.shape();
        if s.len() != 3 || s[2] != self.cfg.channels {
            return Err(Error::invalid("wmsa_forward: expected (B, L, C)"));
        }
        if s[1] != self.cfg.tokens_per_window() {
            return Err(Error::invalid("wmsa_forward: token count != window area"));
        }
        let c = self.cfg.channels;
        let h = self.cfg.heads;
        let d = self.cfg.head_dim();
        let qkv = self.qkv.forward(x);
        let q = split_heads(&qkv.slice_axis(2, 0, c), h);
        let k = split_heads(&qkv.slice_axis(2, c, c), h);
        let v = split_heads(&qkv.slice_axis(2, 2 * c, c), h);
        let attn = q
            .matmul(&k.transpose_last())
            .scale(1.0 / (d as f64).sqrt())
            .add(&self.bias)
            .softmax_last();
        Ok(self.out.forward(&merge_heads(&attn.matmul(&v))))
    }
}
