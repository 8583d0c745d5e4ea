//! Network builders and forward/backward contracts: 3D ResNet and U-Net
//! generators, the 3D PatchGAN discriminator, and the analytic receptive
//! field calculator.
//!
//! Shared architectural rules, fixed across every network here:
//! * the depth axis is never strided, so `D` survives both networks exactly;
//! * generator stem/head use spatial kernel 7 with reflection padding,
//!   interior convolutions use kernel 3;
//! * upsampling is by fractional-strided convolution with spatial output
//!   padding 1 to restore the exact extent;
//! * every convolution is followed by instance norm and ReLU except network
//!   heads (tanh for generators, raw logits for discriminators).

use ndarray::{ArrayViewD, ArrayViewMutD, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    seq_backward, seq_forward, seq_visit_params, seq_visit_params_mut, Conv3d, ConvTranspose3d,
    GradStore, InstanceNorm, Layer, LayerCache, Module, NormKind, PadMode, Real, Tensor,
};
use crate::rng::Stream;

/// Generator backbone variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arch {
    Resnet,
    Unet,
}

/// Architecture descriptor for a generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    pub n_downsampling: usize,
    pub n_res_blocks: usize,
    pub base_width: usize,
    pub arch: Arch,
    pub padding_mode: PadMode,
    pub norm: NormKind,
    pub norm_affine: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            in_channels: 1,
            out_channels: 3,
            n_downsampling: 3,
            n_res_blocks: 9,
            base_width: 64,
            arch: Arch::Resnet,
            padding_mode: PadMode::Reflect,
            norm: NormKind::Instance,
            norm_affine: false,
        }
    }
}

impl GeneratorConfig {
    /// Grayscale-to-RGB direction with defaults.
    pub fn oct_to_confocal() -> Self {
        Self::default()
    }

    /// RGB-to-grayscale direction with defaults.
    pub fn confocal_to_oct() -> Self {
        Self::default().mirrored()
    }

    /// Same architecture with input/output channels swapped.
    pub fn mirrored(&self) -> Self {
        Self {
            in_channels: self.out_channels,
            out_channels: self.in_channels,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pairing_ok = (self.in_channels == 1 && self.out_channels == 3)
            || (self.in_channels == 3 && self.out_channels == 1);
        if !pairing_ok {
            return Err(Error::Config(format!(
                "generator channels must pair 1<->3, got {}->{}",
                self.in_channels, self.out_channels
            )));
        }
        if !(self.n_downsampling == 2 || self.n_downsampling == 3) {
            return Err(Error::Config(format!(
                "n_downsampling must be 2 or 3, got {}",
                self.n_downsampling
            )));
        }
        if self.arch == Arch::Resnet && self.n_res_blocks < 1 {
            return Err(Error::Config(
                "resnet generator needs at least one residual block".into(),
            ));
        }
        if self.base_width < 1 {
            return Err(Error::Config("base_width must be >= 1".into()));
        }
        Ok(())
    }

    /// Bottleneck channel width: `base_width * 2^n_downsampling`.
    pub fn bottleneck_width(&self) -> usize {
        self.base_width << self.n_downsampling
    }
}

/// Architecture descriptor for the PatchGAN discriminator. With the default
/// plan (kernel 4, spatial strides `[2,2,2,1,1]`) the final logit sees a
/// 70x70 spatial patch and a depth extent of 11 >= 9, covering the full
/// 9-slice stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub in_channels: usize,
    pub widths: Vec<usize>,
    pub spatial_kernel: usize,
    pub spatial_strides: Vec<usize>,
    pub depth_kernel: usize,
    pub depth_stride: usize,
    pub norm: NormKind,
    pub norm_affine: bool,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            in_channels: 3,
            widths: vec![64, 128, 256, 512],
            spatial_kernel: 4,
            spatial_strides: vec![2, 2, 2, 1, 1],
            depth_kernel: 3,
            depth_stride: 1,
            norm: NormKind::Instance,
            norm_affine: false,
        }
    }
}

impl DiscriminatorConfig {
    pub fn for_channels(in_channels: usize) -> Self {
        Self {
            in_channels,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() {
            return Err(Error::Config(
                "discriminator needs at least one width".into(),
            ));
        }
        if self.spatial_strides.len() != self.widths.len() + 1 {
            return Err(Error::Config(format!(
                "need {} spatial strides (one per conv incl. the logit head), got {}",
                self.widths.len() + 1,
                self.spatial_strides.len()
            )));
        }
        if self.spatial_kernel < 1 || self.depth_kernel < 1 || self.depth_stride < 1 {
            return Err(Error::Config("kernels and strides must be >= 1".into()));
        }
        if self.spatial_strides.iter().any(|&s| s < 1) {
            return Err(Error::Config("spatial strides must be >= 1".into()));
        }
        Ok(())
    }

    /// Per-conv `(kernel, stride, pad)` plan along one spatial axis.
    fn spatial_plan(&self) -> Vec<(usize, usize, usize)> {
        self.spatial_strides
            .iter()
            .map(|&s| (self.spatial_kernel, s, 1))
            .collect()
    }

    /// Per-conv `(kernel, stride, pad)` plan along the depth axis.
    fn depth_plan(&self) -> Vec<(usize, usize, usize)> {
        (0..self.spatial_strides.len())
            .map(|_| (self.depth_kernel, self.depth_stride, self.depth_kernel / 2))
            .collect()
    }
}

/// Receptive-field extent of one output logit, per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReceptiveField {
    pub depth: usize,
    pub height: usize,
    pub width: usize,
}

/// Affine index map from a logit position to its input window along one
/// axis: logit `i` reads `[i * jump + offset, i * jump + offset + extent)`,
/// clipped to the input bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AxisGeometry {
    pub extent: usize,
    pub jump: usize,
    pub offset: isize,
}

impl AxisGeometry {
    /// The clipped input window `[start, end)` of logit `i` on an axis of
    /// length `n`.
    pub fn window(&self, i: usize, n: usize) -> (usize, usize) {
        let start = i as isize * self.jump as isize + self.offset;
        let end = start + self.extent as isize;
        (start.max(0) as usize, (end.max(0) as usize).min(n))
    }
}

/// Folds the standard receptive-field recurrence over a `(kernel, stride,
/// pad)` plan listed input-to-output: extent grows by `(k - 1)` times the
/// product of the preceding strides.
pub fn compose_axis(plan: &[(usize, usize, usize)]) -> AxisGeometry {
    let mut extent = 1usize;
    let mut jump = 1usize;
    let mut offset = 0isize;
    for &(k, s, p) in plan {
        extent += (k - 1) * jump;
        offset -= p as isize * jump as isize;
        jump *= s;
    }
    AxisGeometry {
        extent,
        jump,
        offset,
    }
}

/// Per-axis logit geometry `[depth, height, width]` of a discriminator.
pub fn discriminator_geometry(cfg: &DiscriminatorConfig) -> [AxisGeometry; 3] {
    let spatial = compose_axis(&cfg.spatial_plan());
    let depth = compose_axis(&cfg.depth_plan());
    [depth, spatial, spatial]
}

/// Analytic receptive field of one logit.
pub fn receptive_field(cfg: &DiscriminatorConfig) -> ReceptiveField {
    let [d, h, w] = discriminator_geometry(cfg);
    ReceptiveField {
        depth: d.extent,
        height: h.extent,
        width: w.extent,
    }
}

fn norm_layer<T: Real>(
    cfg_norm: NormKind,
    affine: bool,
    name: String,
    ch: usize,
) -> Option<Layer<T>> {
    match cfg_norm {
        NormKind::Instance => Some(Layer::Norm(InstanceNorm::new(name, ch, affine))),
        NormKind::None => None,
    }
}

/// One residual block: two reflection-padded 3x3x3 convolutions with an
/// additive skip. No activation after the sum.
struct ResBlock<T> {
    branch: Vec<Layer<T>>,
}

impl<T: Real> ResBlock<T> {
    fn new(name: &str, width: usize, cfg: &GeneratorConfig, rng: &mut Stream) -> Self {
        let mut branch = Vec::new();
        branch.push(Layer::Conv(Conv3d::new(
            format!("{name}.conv1"),
            width,
            width,
            [3, 3, 3],
            [1, 1, 1],
            [1, 1, 1],
            cfg.padding_mode,
            rng,
        )));
        if let Some(n) = norm_layer(cfg.norm, cfg.norm_affine, format!("{name}.norm1"), width) {
            branch.push(n);
        }
        branch.push(Layer::Relu);
        branch.push(Layer::Conv(Conv3d::new(
            format!("{name}.conv2"),
            width,
            width,
            [3, 3, 3],
            [1, 1, 1],
            [1, 1, 1],
            cfg.padding_mode,
            rng,
        )));
        if let Some(n) = norm_layer(cfg.norm, cfg.norm_affine, format!("{name}.norm2"), width) {
            branch.push(n);
        }
        Self { branch }
    }

    fn forward(&self, x: Tensor<T>, tape: Option<&mut Vec<LayerCache<T>>>) -> Result<Tensor<T>> {
        let branch_out = seq_forward(&self.branch, x.clone(), tape)?;
        Ok(branch_out + x)
    }

    fn backward(
        &self,
        tape: &[LayerCache<T>],
        d_out: &Tensor<T>,
        grads: &mut GradStore<T>,
    ) -> Tensor<T> {
        let d_branch = seq_backward(&self.branch, tape, d_out.clone(), grads, true)
            .expect("residual branch always propagates dx");
        d_branch + d_out
    }
}

struct ResnetBody<T> {
    encoder: Vec<Layer<T>>,
    blocks: Vec<ResBlock<T>>,
    decoder: Vec<Layer<T>>,
}

struct UnetLevel<T> {
    up: Vec<Layer<T>>,
    fuse: Vec<Layer<T>>,
    skip_channels: usize,
}

struct UnetBody<T> {
    stem: Vec<Layer<T>>,
    enc: Vec<Vec<Layer<T>>>,
    dec: Vec<UnetLevel<T>>,
    head: Vec<Layer<T>>,
}

enum GenBody<T> {
    Resnet(ResnetBody<T>),
    Unet(UnetBody<T>),
}

/// Activation tape for one generator forward pass.
#[derive(Default)]
pub struct GenTape<T> {
    encoder: Vec<LayerCache<T>>,
    blocks: Vec<Vec<LayerCache<T>>>,
    dec_up: Vec<Vec<LayerCache<T>>>,
    dec_fuse: Vec<Vec<LayerCache<T>>>,
    decoder: Vec<LayerCache<T>>,
}

impl<T> GenTape<T> {
    pub fn new() -> Self {
        Self {
            encoder: Vec::new(),
            blocks: Vec::new(),
            dec_up: Vec::new(),
            dec_fuse: Vec::new(),
            decoder: Vec::new(),
        }
    }

    fn clear(&mut self) {
        self.encoder.clear();
        self.blocks.clear();
        self.dec_up.clear();
        self.dec_fuse.clear();
        self.decoder.clear();
    }
}

/// A translation generator (either direction, either backbone).
pub struct Generator<T> {
    cfg: GeneratorConfig,
    name: String,
    body: GenBody<T>,
}

fn concat_channels<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    ndarray::concatenate(Axis(3), &[a.view(), b.view()]).expect("matching spatial dims")
}

fn split_channels<T: Real>(x: &Tensor<T>, c_first: usize) -> (Tensor<T>, Tensor<T>) {
    let a = x.slice(ndarray::s![.., .., .., ..c_first]).to_owned();
    let b = x.slice(ndarray::s![.., .., .., c_first..]).to_owned();
    (a, b)
}

impl<T: Real> Generator<T> {
    /// Builds a generator. `name` prefixes every parameter so two networks
    /// can share one gradient store and optimizer.
    pub fn build(cfg: &GeneratorConfig, name: &str, rng: &mut Stream) -> Result<Self> {
        cfg.validate()?;
        let body = match cfg.arch {
            Arch::Resnet => GenBody::Resnet(Self::build_resnet(cfg, name, rng)),
            Arch::Unet => GenBody::Unet(Self::build_unet(cfg, name, rng)),
        };
        Ok(Self {
            cfg: cfg.clone(),
            name: name.to_string(),
            body,
        })
    }

    fn stem_layers(cfg: &GeneratorConfig, name: &str, rng: &mut Stream) -> Vec<Layer<T>> {
        let mut layers = Vec::new();
        layers.push(Layer::Conv(Conv3d::new(
            format!("{name}.stem.conv"),
            cfg.in_channels,
            cfg.base_width,
            [3, 7, 7],
            [1, 1, 1],
            [1, 3, 3],
            cfg.padding_mode,
            rng,
        )));
        if let Some(n) = norm_layer(
            cfg.norm,
            cfg.norm_affine,
            format!("{name}.stem.norm"),
            cfg.base_width,
        ) {
            layers.push(n);
        }
        layers.push(Layer::Relu);
        layers
    }

    fn head_layers(cfg: &GeneratorConfig, name: &str, rng: &mut Stream) -> Vec<Layer<T>> {
        vec![
            Layer::Conv(Conv3d::new(
                format!("{name}.head.conv"),
                cfg.base_width,
                cfg.out_channels,
                [3, 7, 7],
                [1, 1, 1],
                [1, 3, 3],
                cfg.padding_mode,
                rng,
            )),
            Layer::Tanh,
        ]
    }

    fn down_layers(cfg: &GeneratorConfig, name: &str, i: usize, rng: &mut Stream) -> Vec<Layer<T>> {
        let cin = cfg.base_width << i;
        let cout = cin * 2;
        let mut layers = vec![Layer::Conv(Conv3d::new(
            format!("{name}.down{i}.conv"),
            cin,
            cout,
            [3, 3, 3],
            [1, 2, 2],
            [1, 1, 1],
            PadMode::Zero,
            rng,
        ))];
        if let Some(n) = norm_layer(cfg.norm, cfg.norm_affine, format!("{name}.down{i}.norm"), cout)
        {
            layers.push(n);
        }
        layers.push(Layer::Relu);
        layers
    }

    fn up_layers(cfg: &GeneratorConfig, name: &str, i: usize, rng: &mut Stream) -> Vec<Layer<T>> {
        let cin = cfg.bottleneck_width() >> i;
        let cout = cin / 2;
        let mut layers = vec![Layer::ConvT(ConvTranspose3d::new(
            format!("{name}.up{i}.convt"),
            cin,
            cout,
            [3, 3, 3],
            [1, 2, 2],
            [1, 1, 1],
            [0, 1, 1],
            rng,
        ))];
        if let Some(n) = norm_layer(cfg.norm, cfg.norm_affine, format!("{name}.up{i}.norm"), cout) {
            layers.push(n);
        }
        layers.push(Layer::Relu);
        layers
    }

    fn build_resnet(cfg: &GeneratorConfig, name: &str, rng: &mut Stream) -> ResnetBody<T> {
        let mut encoder = Self::stem_layers(cfg, name, rng);
        for i in 0..cfg.n_downsampling {
            encoder.extend(Self::down_layers(cfg, name, i, rng));
        }
        let blocks = (0..cfg.n_res_blocks)
            .map(|i| ResBlock::new(&format!("{name}.res{i}"), cfg.bottleneck_width(), cfg, rng))
            .collect();
        let mut decoder = Vec::new();
        for i in 0..cfg.n_downsampling {
            decoder.extend(Self::up_layers(cfg, name, i, rng));
        }
        decoder.extend(Self::head_layers(cfg, name, rng));
        ResnetBody {
            encoder,
            blocks,
            decoder,
        }
    }

    fn build_unet(cfg: &GeneratorConfig, name: &str, rng: &mut Stream) -> UnetBody<T> {
        let stem = Self::stem_layers(cfg, name, rng);
        let enc = (0..cfg.n_downsampling)
            .map(|i| Self::down_layers(cfg, name, i, rng))
            .collect();
        let mut dec = Vec::new();
        for i in 0..cfg.n_downsampling {
            let up = Self::up_layers(cfg, name, i, rng);
            let skip_channels = cfg.bottleneck_width() >> (i + 1);
            let mut fuse = vec![Layer::Conv(Conv3d::new(
                format!("{name}.dec{i}.fuse.conv"),
                skip_channels * 2,
                skip_channels,
                [3, 3, 3],
                [1, 1, 1],
                [1, 1, 1],
                cfg.padding_mode,
                rng,
            ))];
            if let Some(n) = norm_layer(
                cfg.norm,
                cfg.norm_affine,
                format!("{name}.dec{i}.fuse.norm"),
                skip_channels,
            ) {
                fuse.push(n);
            }
            fuse.push(Layer::Relu);
            dec.push(UnetLevel {
                up,
                fuse,
                skip_channels,
            });
        }
        let head = Self::head_layers(cfg, name, rng);
        UnetBody {
            stem,
            enc,
            dec,
            head,
        }
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.cfg
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let (_, h, w, c) = x.dim();
        if c != self.cfg.in_channels {
            return Err(Error::Shape(format!(
                "generator {} expects {} input channels, got {c}",
                self.name, self.cfg.in_channels
            )));
        }
        let div = 1usize << self.cfg.n_downsampling;
        if h % div != 0 || w % div != 0 {
            return Err(Error::Shape(format!(
                "generator {} requires H and W divisible by {div} (n_downsampling = {}), got {h}x{w}",
                self.name, self.cfg.n_downsampling
            )));
        }
        Ok(())
    }

    /// Inference forward pass: no activation caching.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.run(x, None)
    }

    /// Training forward pass: records activations into `tape`, which the
    /// matching [`Self::backward`] call consumes.
    pub fn forward_traced(&self, x: &Tensor<T>, tape: &mut GenTape<T>) -> Result<Tensor<T>> {
        tape.clear();
        self.run(x, Some(tape))
    }

    fn run(&self, x: &Tensor<T>, mut tape: Option<&mut GenTape<T>>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        match &self.body {
            GenBody::Resnet(body) => {
                let mut t = seq_forward(
                    &body.encoder,
                    x.clone(),
                    tape.as_deref_mut().map(|t| &mut t.encoder),
                )?;
                for block in &body.blocks {
                    let block_tape = tape.as_deref_mut().map(|t| {
                        t.blocks.push(Vec::new());
                        t.blocks.last_mut().unwrap()
                    });
                    t = block.forward(t, block_tape)?;
                }
                seq_forward(
                    &body.decoder,
                    t,
                    tape.as_deref_mut().map(|t| &mut t.decoder),
                )
            }
            GenBody::Unet(body) => {
                let mut t = seq_forward(
                    &body.stem,
                    x.clone(),
                    tape.as_deref_mut().map(|t| &mut t.encoder),
                )?;
                let mut skips = Vec::with_capacity(body.enc.len());
                for level in &body.enc {
                    skips.push(t.clone());
                    let level_tape = tape.as_deref_mut().map(|t| {
                        t.blocks.push(Vec::new());
                        t.blocks.last_mut().unwrap()
                    });
                    t = seq_forward(level, t, level_tape)?;
                }
                for (i, level) in body.dec.iter().enumerate() {
                    let up_tape = tape.as_deref_mut().map(|t| {
                        t.dec_up.push(Vec::new());
                        t.dec_up.last_mut().unwrap()
                    });
                    let up = seq_forward(&level.up, t, up_tape)?;
                    let skip = &skips[skips.len() - 1 - i];
                    let cat = concat_channels(&up, skip);
                    let fuse_tape = tape.as_deref_mut().map(|t| {
                        t.dec_fuse.push(Vec::new());
                        t.dec_fuse.last_mut().unwrap()
                    });
                    t = seq_forward(&level.fuse, cat, fuse_tape)?;
                }
                seq_forward(&body.head, t, tape.as_deref_mut().map(|t| &mut t.decoder))
            }
        }
    }

    /// Backward pass over a recorded tape. Accumulates parameter gradients
    /// and returns the input gradient when `need_dx` holds.
    pub fn backward(
        &self,
        tape: &GenTape<T>,
        d_out: Tensor<T>,
        grads: &mut GradStore<T>,
        need_dx: bool,
    ) -> Option<Tensor<T>> {
        match &self.body {
            GenBody::Resnet(body) => {
                let mut d = seq_backward(&body.decoder, &tape.decoder, d_out, grads, true)
                    .expect("decoder propagates dx");
                for (block, block_tape) in body.blocks.iter().zip(tape.blocks.iter()).rev() {
                    d = block.backward(block_tape, &d, grads);
                }
                seq_backward(&body.encoder, &tape.encoder, d, grads, need_dx)
            }
            GenBody::Unet(body) => {
                let mut d = seq_backward(&body.head, &tape.decoder, d_out, grads, true)
                    .expect("head propagates dx");
                let n = body.dec.len();
                let mut skip_grads: Vec<Option<Tensor<T>>> = (0..n).map(|_| None).collect();
                for (i, level) in body.dec.iter().enumerate().rev() {
                    let d_cat = seq_backward(&level.fuse, &tape.dec_fuse[i], d, grads, true)
                        .expect("fuse propagates dx");
                    let (d_up, d_skip) = split_channels(&d_cat, level.skip_channels);
                    // dec level i consumed the input of encoder level n-1-i
                    skip_grads[n - 1 - i] = Some(d_skip);
                    d = seq_backward(&level.up, &tape.dec_up[i], d_up, grads, true)
                        .expect("upsampler propagates dx");
                }
                for (j, level) in body.enc.iter().enumerate().rev() {
                    d = seq_backward(level, &tape.blocks[j], d, grads, true)
                        .expect("encoder level propagates dx");
                    if let Some(sg) = skip_grads[j].take() {
                        d = d + sg;
                    }
                }
                seq_backward(&body.stem, &tape.encoder, d, grads, need_dx)
            }
        }
    }

    fn layer_groups(&self) -> Vec<&[Layer<T>]> {
        match &self.body {
            GenBody::Resnet(body) => {
                let mut groups = vec![body.encoder.as_slice()];
                groups.extend(body.blocks.iter().map(|b| b.branch.as_slice()));
                groups.push(body.decoder.as_slice());
                groups
            }
            GenBody::Unet(body) => {
                let mut groups = vec![body.stem.as_slice()];
                groups.extend(body.enc.iter().map(|l| l.as_slice()));
                for level in &body.dec {
                    groups.push(level.up.as_slice());
                    groups.push(level.fuse.as_slice());
                }
                groups.push(body.head.as_slice());
                groups
            }
        }
    }

    fn layer_groups_mut(&mut self) -> Vec<&mut [Layer<T>]> {
        match &mut self.body {
            GenBody::Resnet(body) => {
                let mut groups = vec![body.encoder.as_mut_slice()];
                groups.extend(body.blocks.iter_mut().map(|b| b.branch.as_mut_slice()));
                groups.push(body.decoder.as_mut_slice());
                groups
            }
            GenBody::Unet(body) => {
                let mut groups = vec![body.stem.as_mut_slice()];
                groups.extend(body.enc.iter_mut().map(|l| l.as_mut_slice()));
                for level in &mut body.dec {
                    groups.push(level.up.as_mut_slice());
                    groups.push(level.fuse.as_mut_slice());
                }
                groups.push(body.head.as_mut_slice());
                groups
            }
        }
    }

    /// Total number of convolution layers (used by symmetry checks).
    pub fn conv_layer_count(&self) -> usize {
        self.layer_groups()
            .iter()
            .flat_map(|g| g.iter())
            .filter(|l| matches!(l, Layer::Conv(_) | Layer::ConvT(_)))
            .count()
    }
}

impl<T: Real> Module<T> for Generator<T> {
    fn visit_params(&self, f: &mut dyn FnMut(&str, ArrayViewD<'_, T>)) {
        for group in self.layer_groups() {
            seq_visit_params(group, f);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, T>)) {
        for group in self.layer_groups_mut() {
            seq_visit_params_mut(group, f);
        }
    }
}

/// Map of raw (pre-sigmoid) patch logits, one per overlapping receptive
/// field position: shape `(D', H', W', 1)`.
pub type PatchLogitMap<T> = Tensor<T>;

/// The 3D PatchGAN discriminator.
pub struct Discriminator<T> {
    cfg: DiscriminatorConfig,
    name: String,
    layers: Vec<Layer<T>>,
}

/// Activation tape for one discriminator forward pass.
#[derive(Default)]
pub struct DiscTape<T> {
    layers: Vec<LayerCache<T>>,
}

impl<T> DiscTape<T> {
    pub fn new() -> Self {
        Self { layers: Vec::new() }
    }
}

impl<T: Real> Discriminator<T> {
    pub fn build(cfg: &DiscriminatorConfig, name: &str, rng: &mut Stream) -> Result<Self> {
        cfg.validate()?;
        let mut layers = Vec::new();
        let mut cin = cfg.in_channels;
        let kernel = [cfg.depth_kernel, cfg.spatial_kernel, cfg.spatial_kernel];
        let pad = [cfg.depth_kernel / 2, 1, 1];
        for (i, &cout) in cfg.widths.iter().enumerate() {
            let s = cfg.spatial_strides[i];
            layers.push(Layer::Conv(Conv3d::new(
                format!("{name}.l{i}.conv"),
                cin,
                cout,
                kernel,
                [cfg.depth_stride, s, s],
                pad,
                PadMode::Zero,
                rng,
            )));
            // no normalization on the first layer
            if i > 0 {
                if let Some(n) =
                    norm_layer(cfg.norm, cfg.norm_affine, format!("{name}.l{i}.norm"), cout)
                {
                    layers.push(n);
                }
            }
            layers.push(Layer::LeakyRelu(0.2));
            cin = cout;
        }
        let s_last = *cfg.spatial_strides.last().unwrap();
        layers.push(Layer::Conv(Conv3d::new(
            format!("{name}.logit.conv"),
            cin,
            1,
            kernel,
            [cfg.depth_stride, s_last, s_last],
            pad,
            PadMode::Zero,
            rng,
        )));
        Ok(Self {
            cfg: cfg.clone(),
            name: name.to_string(),
            layers,
        })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.cfg
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let c = x.dim().3;
        if c != self.cfg.in_channels {
            return Err(Error::Shape(format!(
                "discriminator {} expects {} input channels, got {c}",
                self.name, self.cfg.in_channels
            )));
        }
        Ok(())
    }

    /// Inference forward pass producing the raw logit map. Errors when the
    /// input is too small for the conv plan to produce any logit.
    pub fn forward(&self, x: &Tensor<T>) -> Result<PatchLogitMap<T>> {
        self.check_input(x)?;
        seq_forward(&self.layers, x.clone(), None)
    }

    pub fn forward_traced(
        &self,
        x: &Tensor<T>,
        tape: &mut DiscTape<T>,
    ) -> Result<PatchLogitMap<T>> {
        self.check_input(x)?;
        tape.layers.clear();
        seq_forward(&self.layers, x.clone(), Some(&mut tape.layers))
    }

    pub fn backward(
        &self,
        tape: &DiscTape<T>,
        d_out: Tensor<T>,
        grads: &mut GradStore<T>,
        need_dx: bool,
    ) -> Option<Tensor<T>> {
        seq_backward(&self.layers, &tape.layers, d_out, grads, need_dx)
    }

    /// Output logit-map extents for a given input extent, by conv
    /// arithmetic over the layer plan.
    pub fn logit_map_shape(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let mut dims = input;
        for layer in &self.layers {
            if let Layer::Conv(c) = layer {
                dims = c.out_shape(dims)?;
            }
        }
        Ok(dims)
    }
}

impl<T: Real> Module<T> for Discriminator<T> {
    fn visit_params(&self, f: &mut dyn FnMut(&str, ArrayViewD<'_, T>)) {
        seq_visit_params(&self.layers, f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, T>)) {
        seq_visit_params_mut(&mut self.layers, f);
    }
}
