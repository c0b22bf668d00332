//! Mona adapter layers, their insertion into a miniature Swin-style
//! encoder, and the frozen / fft / mona trainability contract.

use crate::attention::{window_partition, window_reverse, AttentionConfig, Wmsa};
use crate::error::{Error, Result};
use crate::nn::{Conv2d, Init, LayerNorm, Linear, Mlp, ParamBuilder};
use crate::params::{ParamGroup, TuningMode};
use crate::tensor::Tensor;

/// Reduction ratio for the Mona down-projection.
pub const MONA_REDUCTION: usize = 4;

/// Multi-cognitive adapter: norm -> down (C -> C/4) -> GELU -> multi-scale
/// depthwise convolutions (3x3, 5x5, 7x7, summed) -> pointwise 1x1 ->
/// up (zero-initialized) -> skip. Exact identity at init.
pub struct MonaLayer {
    channels: usize,
    norm: LayerNorm,
    down: Linear,
    dw: Vec<(Tensor, Tensor, usize)>, // (weight, bias, pad) per kernel size
    point: Conv2d,
    up: Linear,
}

impl MonaLayer {
    pub fn new(pb: &mut ParamBuilder, name: &str, channels: usize) -> MonaLayer {
        let hidden = (channels / MONA_REDUCTION).max(1);
        pb.scope_group(name, ParamGroup::Mona, |pb| MonaLayer {
            channels,
            norm: LayerNorm::new(pb, "norm", channels),
            down: Linear::new(pb, "down", channels, hidden, Init::Kaiming),
            dw: [3usize, 5, 7]
                .iter()
                .map(|&k| {
                    (
                        pb.param(&format!("dw{k}.weight"), &[hidden, 1, k, k], Init::Kaiming),
                        pb.param(&format!("dw{k}.bias"), &[hidden], Init::Zero),
                        k / 2,
                    )
                })
                .collect(),
            point: Conv2d::new(pb, "point", hidden, hidden, 1, 1, 0, 1, Init::Kaiming),
            up: Linear::new(pb, "up", hidden, channels, Init::Zero),
        })
    }

    /// `x`: (B, L, C) tokens. `grid` gives the (H, W) spatial layout of the
    /// L tokens; if omitted, L must be a perfect square.
    pub fn forward(&self, x: &Tensor, grid: Option<(usize, usize)>) -> Result<Tensor> {
        let s = x.shape();
        if s.len() != 3 || s[2] != self.channels {
            return Err(Error::invalid("mona_forward: expected (B, L, C)"));
        }
        let (b, l) = (s[0], s[1]);
        let (gh, gw) = match grid {
            Some(d) => d,
            None => {
                let side = (l as f64).sqrt() as usize;
                if side * side != l {
                    return Err(Error::invalid(
                        "mona_forward: non-square token grid needs explicit dims",
                    ));
                }
                (side, side)
            }
        };
        if gh * gw != l {
            return Err(Error::invalid("mona_forward: grid does not match token count"));
        }
        let hidden = (self.channels / MONA_REDUCTION).max(1);

        let z = self.down.forward(&self.norm.forward(x)).gelu();
        let map = z.reshape(&[b, gh, gw, hidden]).permute(&[0, 3, 1, 2]);
        let mut branches = None;
        for (w, bias, pad) in &self.dw {
            let y = map.conv2d(w, Some(bias), 1, *pad, hidden);
            branches = Some(match branches {
                None => y,
                Some(acc) => Tensor::add(&acc, &y),
            });
        }
        let mixed = self
            .point
            .forward(&branches.expect("at least one depthwise branch"));
        let tokens = mixed.permute(&[0, 2, 3, 1]).reshape(&[b, l, hidden]);
        Ok(x.add(&self.up.forward(&tokens)))
    }
}

/// A Swin-style transformer block with optional Mona adapters inserted
/// after the attention and feed-forward sub-blocks.
pub struct MonaSwinBlock {
    pub cfg: AttentionConfig,
    norm1: LayerNorm,
    attn: Wmsa,
    norm2: LayerNorm,
    mlp: Mlp,
    mona: Option<(MonaLayer, MonaLayer)>,
}

impl MonaSwinBlock {
    pub fn new(
        pb: &mut ParamBuilder,
        name: &str,
        cfg: AttentionConfig,
        mlp_ratio: usize,
        with_mona: bool,
    ) -> MonaSwinBlock {
        let c = cfg.channels;
        pb.scope(name, |pb| MonaSwinBlock {
            cfg,
            norm1: LayerNorm::new(pb, "norm1", c),
            attn: Wmsa::new(pb, "attn", cfg),
            norm2: LayerNorm::new(pb, "norm2", c),
            mlp: Mlp::new(pb, "mlp", c, c * mlp_ratio),
            mona: with_mona.then(|| {
                (
                    MonaLayer::new(pb, "mona1", c),
                    MonaLayer::new(pb, "mona2", c),
                )
            }),
        })
    }

    /// `x`: (1, C, H, W) feature map; windows are taken and merged here.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (tokens, grid) = window_partition(x, self.cfg.window)?;
        let mut t = tokens.add(&self.attn.forward(&self.norm1.forward(&tokens))?);
        if let Some((mona1, _)) = &self.mona {
            t = mona1.forward(&t, Some(self.cfg.window))?;
        }
        t = t.add(&self.mlp.forward(&self.norm2.forward(&t)));
        if let Some((_, mona2)) = &self.mona {
            t = mona2.forward(&t, Some(self.cfg.window))?;
        }
        Ok(window_reverse(&t, &grid))
    }
}

/// Encoder configuration: a miniature Swin hierarchy.
#[derive(Debug, Clone)]
pub struct SwinEncoderConfig {
    pub channels: Vec<usize>,
    pub depths: Vec<usize>,
    pub heads: usize,
    pub window: usize,
    pub mlp_ratio: usize,
    pub n_agents: usize,
}

impl Default for SwinEncoderConfig {
    fn default() -> SwinEncoderConfig {
        SwinEncoderConfig {
            channels: vec![32, 64],
            depths: vec![2, 2],
            heads: 8,
            window: 8,
            mlp_ratio: 4,
            n_agents: 4,
        }
    }
}

/// Miniature Swin-style pyramid: patch embed (stride 2), then stages of
/// `MonaSwinBlock`s separated by stride-2 downsampling convolutions.
/// Backbone weights are tagged `backbone`; adapters are tagged `mona`
/// and omitted entirely in frozen mode.
pub struct SwinEncoder {
    pub cfg: SwinEncoderConfig,
    patch_embed: Conv2d,
    stages: Vec<Vec<MonaSwinBlock>>,
    downsamples: Vec<Conv2d>,
}

impl SwinEncoder {
    pub fn new(
        pb: &mut ParamBuilder,
        name: &str,
        cfg: SwinEncoderConfig,
        mode: TuningMode,
    ) -> SwinEncoder {
        assert_eq!(cfg.channels.len(), cfg.depths.len());
        let with_mona = mode != TuningMode::Frozen;
        pb.scope_group(name, ParamGroup::Backbone, |pb| {
            let patch_embed =
                Conv2d::new(pb, "patch_embed", 3, cfg.channels[0], 3, 2, 1, 1, Init::Kaiming);
            let mut stages = Vec::new();
            let mut downsamples = Vec::new();
            for (si, (&c, &depth)) in cfg.channels.iter().zip(&cfg.depths).enumerate() {
                let acfg = AttentionConfig {
                    channels: c,
                    heads: cfg.heads,
                    window: (cfg.window, cfg.window),
                    n_agents: cfg.n_agents,
                };
                let blocks = (0..depth)
                    .map(|bi| {
                        MonaSwinBlock::new(
                            pb,
                            &format!("stage{si}.block{bi}"),
                            acfg,
                            cfg.mlp_ratio,
                            with_mona,
                        )
                    })
                    .collect();
                stages.push(blocks);
                if si + 1 < cfg.channels.len() {
                    downsamples.push(Conv2d::new(
                        pb,
                        &format!("down{si}"),
                        c,
                        cfg.channels[si + 1],
                        3,
                        2,
                        1,
                        1,
                        Init::Kaiming,
                    ));
                }
            }
            SwinEncoder {
                cfg,
                patch_embed,
                stages,
                downsamples,
            }
        })
    }

    /// `x`: (1, 3, H, W) image; returns per-stage features, strides 2 and 4.
    pub fn forward(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let s = x.shape();
        if s.len() != 4 || s[1] != 3 {
            return Err(Error::invalid("encoder expects a (1, 3, H, W) image"));
        }
        let mut feat = self.patch_embed.forward(x);
        let mut out = Vec::new();
        for (si, blocks) in self.stages.iter().enumerate() {
            for block in blocks {
                feat = block.forward(&feat)?;
            }
            out.push(feat.clone());
            if si < self.downsamples.len() {
                feat = self.downsamples[si].forward(&feat);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_gradients;
    use crate::params::ParamStore;
    use ndarray::{ArrayD, IxDyn};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn randt(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::constant(ArrayD::from_shape_fn(IxDyn(shape), |_| rng.gen::<f64>() - 0.5))
    }

    #[test]
    fn mona_is_exact_identity_at_init() {
        let mut store = ParamStore::new();
        let mut pb = ParamBuilder::new(&mut store, 1);
        for c in [8usize, 16] {
            let mona = MonaLayer::new(&mut pb, &format!("mona{c}"), c);
            for grid in [(4usize, 4usize), (8, 8)] {
                let x = randt(&[2, grid.0 * grid.1, c], c as u64);
                let y = mona.forward(&x, Some(grid)).unwrap();
                assert_eq!(y.shape(), x.shape());
                let diff = y
                    .value()
                    .iter()
                    .zip(x.value().iter())
                    .fold(0.0f64, |m, (&a, &b)| m.max((a - b).abs()));
                assert_eq!(diff, 0.0);
            }
        }
    }

    #[test]
    fn mona_square_grid_inferred_nonsquare_rejected() {
        let mut store = ParamStore::new();
        let mut pb = ParamBuilder::new(&mut store, 2);
        let mona = MonaLayer::new(&mut pb, "mona", 8);
        assert!(mona.forward(&randt(&[1, 16, 8], 3), None).is_ok());
        assert!(mona.forward(&randt(&[1, 12, 8], 3), None).is_err());
        assert!(mona.forward(&randt(&[1, 12, 8], 3), Some((3, 4))).is_ok());
        assert!(mona.forward(&randt(&[1, 12, 8], 3), Some((5, 2))).is_err());
    }

    #[test]
    fn mona_gradients_match_finite_differences() {
        let mut store = ParamStore::new();
        let mut pb = ParamBuilder::new(&mut store, 3);
        let mona = MonaLayer::new(&mut pb, "mona", 8);
        // nudge the up-projection off zero so its input gradient is live
        let up = store.get("mona.up.weight").unwrap().tensor.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        up.set_value(ArrayD::from_shape_fn(IxDyn(&up.shape()), |_| {
            (rng.gen::<f64>() - 0.5) * 0.2
        }));
        let x = randt(&[1, 16, 8], 4);
        let params = store.all_tensors();
        let report = check_gradients(
            || mona.forward(&x, None).unwrap().square().mean_all(),
            &params,
            Some(5),
            1e-5,
        );
        assert!(report.passes(1e-4), "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn block_with_mona_equals_plain_block_at_init() {
        let cfg = AttentionConfig {
            channels: 8,
            heads: 2,
            window: (4, 4),
            n_agents: 4,
        };
        let mut store_a = ParamStore::new();
        let mut pb = ParamBuilder::new(&mut store_a, 7);
        let with = MonaSwinBlock::new(&mut pb, "blk", cfg, 2, true);
        let mut store_b = ParamStore::new();
        let mut pb = ParamBuilder::new(&mut store_b, 7);
        let plain = MonaSwinBlock::new(&mut pb, "blk", cfg, 2, false);

        let x = randt(&[1, 8, 9, 10], 8); // non-multiple dims exercise padding
        let ya = with.forward(&x).unwrap();
        let yb = plain.forward(&x).unwrap();
        assert_eq!(ya.shape(), x.shape());
        let diff = ya
            .value()
            .iter()
            .zip(yb.value().iter())
            .fold(0.0f64, |m, (&a, &b)| m.max((a - b).abs()));
        assert!(diff < 1e-12, "diff {diff}");
    }

    #[test]
    fn encoder_shapes_and_mode_equivalence_at_init() {
        let cfg = SwinEncoderConfig {
            channels: vec![8, 16],
            depths: vec![1, 1],
            heads: 2,
            window: 4,
            mlp_ratio: 2,
            n_agents: 4,
        };
        let mut store_m = ParamStore::new();
        let mut pb = ParamBuilder::new(&mut store_m, 11);
        let enc_mona = SwinEncoder::new(&mut pb, "enc", cfg.clone(), TuningMode::Mona);
        let mut store_f = ParamStore::new();
        let mut pb = ParamBuilder::new(&mut store_f, 11);
        let enc_frozen = SwinEncoder::new(&mut pb, "enc", cfg, TuningMode::Frozen);

        let x = randt(&[1, 3, 16, 16], 12);
        let fm = enc_mona.forward(&x).unwrap();
        let ff = enc_frozen.forward(&x).unwrap();
        assert_eq!(fm[0].shape(), vec![1, 8, 8, 8]);
        assert_eq!(fm[1].shape(), vec![1, 16, 4, 4]);
        for (a, b) in fm.iter().zip(&ff) {
            let diff = a
                .value()
                .iter()
                .zip(b.value().iter())
                .fold(0.0f64, |m, (&x, &y)| m.max((x - y).abs()));
            assert!(diff < 1e-12, "mona-at-init must equal frozen: {diff}");
        }
    }

    #[test]
    fn default_config_adapter_ratio_under_ten_percent() {
        let mut store = ParamStore::new();
        let mut pb = ParamBuilder::new(&mut store, 13);
        let _enc = SwinEncoder::new(&mut pb, "enc", SwinEncoderConfig::default(), TuningMode::Mona);
        let mona: usize = store.count_group_elements(ParamGroup::Mona);
        let backbone: usize = store.count_group_elements(ParamGroup::Backbone);
        let ratio = mona as f64 / (mona + backbone) as f64;
        assert!(ratio < 0.10, "ratio {ratio} (mona {mona}, backbone {backbone})");
    }

    #[test]
    fn frozen_mode_has_no_mona_parameters() {
        let mut store = ParamStore::new();
        let mut pb = ParamBuilder::new(&mut store, 14);
        let _enc = SwinEncoder::new(
            &mut pb,
            "enc",
            SwinEncoderConfig::default(),
            TuningMode::Frozen,
        );
        assert_eq!(store.count_group_elements(ParamGroup::Mona), 0);
    }

    #[test]
    fn mona_mode_freezes_backbone_after_update() {
        let cfg = SwinEncoderConfig {
            channels: vec![8],
            depths: vec![1],
            heads: 2,
            window: 4,
            mlp_ratio: 2,
            n_agents: 4,
        };
        let mut store = ParamStore::new();
        let mut pb = ParamBuilder::new(&mut store, 15);
        let enc = SwinEncoder::new(&mut pb, "enc", cfg, TuningMode::Mona);
        store.apply_tuning_mode(TuningMode::Mona);
        let before = store.hash_group(ParamGroup::Backbone);

        let x = randt(&[1, 3, 8, 8], 16);
        let loss = enc.forward(&x).unwrap().pop().unwrap().square().mean_all();
        loss.backward();
        // crude SGD step over trainable params only
        for t in store.trainable_tensors() {
            if let Some(g) = t.grad() {
                let v = t.to_array();
                t.set_value(v - 0.1 * &g);
            }
        }
        assert_eq!(store.hash_group(ParamGroup::Backbone), before);
        // and at least one mona parameter actually moved
        let moved = store.iter().any(|(n, e)| {
            n.contains("mona") && e.tensor.value().iter().any(|&v| v != 0.0) && e.trainable
        });
        assert!(moved);
    }
}
