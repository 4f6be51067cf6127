//! The grasp FCN: six conv/batch-norm/ReLU encoder blocks, six mirrored
//! transposed-conv decoder blocks with additive 3×3 skip projections, and a
//! 3×3 head emitting quality, `cos 2φ`, `sin 2φ` and width planes.

mod weights;

pub use weights::{FORMAT_VERSION, MAGIC};
pub(crate) use weights::checksum;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{
    BatchMoments, BatchNormCache, BatchNormStats, MapPlanes, Mode, Parameter, Real, Tensor,
    batchnorm2d_backward, batchnorm2d_forward, conv_transpose2d_backward,
    conv_transpose2d_forward, conv_transpose2d_output_size, conv2d_backward, conv2d_forward,
    conv2d_output_size, relu, relu_backward, sigmoid, sigmoid_backward, tanh, tanh_backward,
};

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPSILON: f64 = 1e-5;
pub const DEPTH: usize = 6;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraspFcnConfig {
    pub input_size: usize,
    pub down_kernels: [usize; DEPTH],
    pub up_kernels: [usize; DEPTH],
    pub down_channels: [usize; DEPTH],
    pub down_strides: [usize; DEPTH],
    pub skip_kernel: usize,
    pub out_channels: usize,
}

impl GraspFcnConfig {
    fn with(input_size: usize, down_channels: [usize; DEPTH]) -> Self {
        Self {
            input_size,
            down_kernels: [9, 5, 3, 3, 3, 3],
            up_kernels: [3, 3, 3, 5, 9, 5],
            down_channels,
            down_strides: [2, 2, 2, 1, 1, 1],
            skip_kernel: 3,
            out_channels: 4,
        }
    }

    /// 400×400 input, channels 16-32-64-128-128-128.
    pub fn paper() -> Self {
        Self::with(400, [16, 32, 64, 128, 128, 128])
    }

    /// 96×96 input, channels 8-16-16-32-32-32. Trains on a CPU in minutes.
    pub fn desk() -> Self {
        Self::with(96, [8, 16, 16, 32, 32, 32])
    }

    /// 16×16 input, two channels per block. For gradient checks.
    pub fn tiny() -> Self {
        Self::with(16, [2; DEPTH])
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "paper" => Some(Self::paper()),
            "desk" => Some(Self::desk()),
            "tiny" => Some(Self::tiny()),
            _ => None,
        }
    }

    /// Spatial size after each encoder block.
    fn encoder_sizes(&self) -> Result<[usize; DEPTH]> {
        let mut sizes = [0; DEPTH];
        let mut s = self.input_size;
        for i in 0..DEPTH {
            let k = self.down_kernels[i];
            s = conv2d_output_size(s, k, self.down_strides[i], k / 2)
                .filter(|&s| s > 0)
                .ok_or_else(|| {
                    Error::invalid("GraspFcn::build", format!("encoder block {i} has no valid output size"))
                })?;
            sizes[i] = s;
        }
        Ok(sizes)
    }

    /// Output padding of every decoder block, chosen so that decoder block
    /// `i` lands exactly on the resolution of encoder block `4 − i` (and the
    /// last block on the input size).
    fn output_paddings(&self) -> Result<[usize; DEPTH]> {
        let enc = self.encoder_sizes()?;
        let mut pads = [0; DEPTH];
        let mut s = enc[DEPTH - 1];
        for i in 0..DEPTH {
            let target = if i + 1 < DEPTH { enc[DEPTH - 2 - i] } else { self.input_size };
            let (k, stride) = (self.up_kernels[i], self.down_strides[DEPTH - 1 - i]);
            let base = conv_transpose2d_output_size(s, k, stride, k / 2, 0).unwrap_or(0);
            let op = target.checked_sub(base).filter(|&op| op < stride).ok_or_else(|| {
                Error::invalid(
                    "GraspFcn::build",
                    format!(
                        "decoder block {i} cannot mirror the encoder: {s} upsampled by stride {stride} reaches {base}, need {target}"
                    ),
                )
            })?;
            pads[i] = op;
            s = target;
        }
        Ok(pads)
    }

    pub fn validate(&self) -> Result<()> {
        let odd = |ks: &[usize], what: &str| match ks.iter().find(|&&k| k % 2 == 0 || k == 0) {
            Some(k) => Err(Error::invalid("GraspFcn::build", format!("{what} kernel {k} must be odd"))),
            None => Ok(()),
        };
        odd(&self.down_kernels, "encoder")?;
        odd(&self.up_kernels, "decoder")?;
        odd(&[self.skip_kernel], "skip")?;
        if self.out_channels != 4 {
            return Err(Error::invalid("GraspFcn::build", "the head emits exactly 4 planes"));
        }
        if self.down_channels.contains(&0) || self.down_strides.contains(&0) {
            return Err(Error::invalid("GraspFcn::build", "channels and strides must be positive"));
        }
        self.output_paddings().map(|_| ())
    }
}

/// Conv (or transposed conv) without bias, then batch norm, then ReLU.
#[derive(Clone, Debug)]
struct Block<T> {
    weight: Parameter<T>,
    gamma: Parameter<T>,
    beta: Parameter<T>,
    stats: BatchNormStats<T>,
    stride: usize,
    padding: usize,
    output_padding: usize,
    transposed: bool,
}

#[derive(Clone, Debug)]
struct Conv<T> {
    weight: Parameter<T>,
    bias: Parameter<T>,
    padding: usize,
}

/// What a forward pass keeps for the backward pass.
pub struct ForwardTrace<T> {
    input: Tensor<T>,
    encoder: Vec<BlockTrace<T>>,
    decoder: Vec<BlockTrace<T>>,
    /// Batch moments of each batch-norm layer, encoder first. `None` in `Eval`.
    pub moments: Vec<Option<BatchMoments<T>>>,
    pub output: MapPlanes<T>,
}

struct BlockTrace<T> {
    cache: BatchNormCache<T>,
    /// Post-ReLU activation.
    act: Tensor<T>,
    /// Activation plus skip projection, where there is one.
    merged: Option<Tensor<T>>,
}

impl<T: Real> ForwardTrace<T> {
    /// Which ReLU units are active, over every block in order. Two traces with
    /// equal patterns lie on the same linear piece of the network.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .flat_map(|t| t.act.data().iter().map(|&v| v > T::zero()))
            .collect()
    }
}

impl<T> BlockTrace<T> {
    fn out(&self) -> &Tensor<T> {
        self.merged.as_ref().unwrap_or(&self.act)
    }
}

#[derive(Clone, Debug)]
pub struct GraspFcn<T = f32> {
    config: GraspFcnConfig,
    encoder: Vec<Block<T>>,
    decoder: Vec<Block<T>>,
    skips: Vec<Conv<T>>,
    head: Conv<T>,
    skips_enabled: bool,
}

fn he_normal<T: Real>(rng: &mut ChaCha8Rng, shape: [usize; 4], fan_in: usize) -> Tensor<T> {
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
    Tensor::from_fn(shape, |_| T::from_f64_lossy(normal.sample(rng)))
}

impl<T: Real> GraspFcn<T> {
    /// Builds the network with He-normal (fan-in) weights drawn from `seed`.
    pub fn build(config: GraspFcnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let pads = config.output_paddings()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ch = config.down_channels;
        let bn = |name: String, c: usize| {
            (
                Parameter::new(format!("{name}.gamma"), Tensor::full([c], T::one())),
                Parameter::new(format!("{name}.beta"), Tensor::zeros([c])),
            )
        };
        let mut encoder = Vec::with_capacity(DEPTH);
        for i in 0..DEPTH {
            let (cin, cout, k) = (if i == 0 { 1 } else { ch[i - 1] }, ch[i], config.down_kernels[i]);
            let (gamma, beta) = bn(format!("enc{i}"), cout);
            encoder.push(Block {
                weight: Parameter::new(format!("enc{i}.weight"), he_normal(&mut rng, [cout, cin, k, k], cin * k * k)),
                gamma,
                beta,
                stats: BatchNormStats::new(cout),
                stride: config.down_strides[i],
                padding: k / 2,
                output_padding: 0,
                transposed: false,
            });
        }
        let mut decoder = Vec::with_capacity(DEPTH);
        let mut cin = ch[DEPTH - 1];
        for i in 0..DEPTH {
            let cout = if i + 1 < DEPTH { ch[DEPTH - 2 - i] } else { ch[0] };
            let k = config.up_kernels[i];
            let (gamma, beta) = bn(format!("dec{i}"), cout);
            decoder.push(Block {
                weight: Parameter::new(format!("dec{i}.weight"), he_normal(&mut rng, [cin, cout, k, k], cin * k * k)),
                gamma,
                beta,
                stats: BatchNormStats::new(cout),
                stride: config.down_strides[DEPTH - 1 - i],
                padding: k / 2,
                output_padding: pads[i],
                transposed: true,
            });
            cin = cout;
        }
        let conv = |rng: &mut ChaCha8Rng, name: String, cin: usize, cout: usize, k: usize| Conv {
            weight: Parameter::new(format!("{name}.weight"), he_normal(rng, [cout, cin, k, k], cin * k * k)),
            bias: Parameter::new(format!("{name}.bias"), Tensor::zeros([cout])),
            padding: k / 2,
        };
        // Skip i feeds decoder block i from encoder block 4 − i.
        let skips = (0..DEPTH - 1)
            .map(|i| {
                let c = ch[DEPTH - 2 - i];
                conv(&mut rng, format!("skip{i}"), c, c, config.skip_kernel)
            })
            .collect();
        let head = conv(&mut rng, "head".into(), ch[0], config.out_channels, 3);
        Ok(Self {
            config,
            encoder,
            decoder,
            skips,
            head,
            skips_enabled: true,
        })
    }

    pub fn config(&self) -> &GraspFcnConfig {
        &self.config
    }

    /// Turns the skip projections off (they stay in the parameter list).
    #[doc(hidden)]
    pub fn set_skips_enabled(&mut self, enabled: bool) {
        self.skips_enabled = enabled;
    }

    /// Zeroes the head so every output is the head nonlinearity at 0.
    #[doc(hidden)]
    pub fn zero_head(&mut self) {
        self.head.weight.value.fill(T::zero());
        self.head.bias.value.fill(T::zero());
    }

    /// Every trainable parameter in build order: encoder, decoder, skips, head.
    pub fn parameters(&self) -> Vec<&Parameter<T>> {
        let mut out = Vec::new();
        for b in self.encoder.iter().chain(&self.decoder) {
            out.extend([&b.weight, &b.gamma, &b.beta]);
        }
        for c in self.skips.iter().chain([&self.head]) {
            out.extend([&c.weight, &c.bias]);
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut out = Vec::new();
        for b in self.encoder.iter_mut().chain(&mut self.decoder) {
            out.extend([&mut b.weight, &mut b.gamma, &mut b.beta]);
        }
        for c in self.skips.iter_mut().chain([&mut self.head]) {
            out.extend([&mut c.weight, &mut c.bias]);
        }
        out
    }

    /// Running statistics of every batch-norm layer, encoder first.
    pub fn batchnorm_stats(&self) -> Vec<&BatchNormStats<T>> {
        self.encoder.iter().chain(&self.decoder).map(|b| &b.stats).collect()
    }

    fn batchnorm_stats_mut(&mut self) -> Vec<&mut BatchNormStats<T>> {
        self.encoder.iter_mut().chain(&mut self.decoder).map(|b| &mut b.stats).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.parameters_mut().into_iter().for_each(Parameter::zero_grad);
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        let [n, c, h, w] = input.dims4("GraspFcn::forward")?;
        let s = self.config.input_size;
        for (dim, expected, found) in [("channels", 1, c), ("height", s, h), ("width", s, w)] {
            if expected != found {
                return Err(Error::ShapeMismatch {
                    op: "GraspFcn::forward",
                    dim,
                    expected,
                    found,
                });
            }
        }
        if n == 0 {
            return Err(Error::invalid("GraspFcn::forward", "empty batch"));
        }
        if !input.all_finite() {
            return Err(Error::invalid("GraspFcn::forward", "input contains non-finite values"));
        }
        Ok(())
    }

    fn run_block(&self, b: &Block<T>, x: &Tensor<T>, mode: Mode) -> Result<(BlockTrace<T>, Option<BatchMoments<T>>)> {
        let z = if b.transposed {
            conv_transpose2d_forward(x, &b.weight.value, None, b.stride, b.padding, b.output_padding)?
        } else {
            conv2d_forward(x, &b.weight.value, None, b.stride, b.padding)?
        };
        let (y, cache, moments) = batchnorm2d_forward(
            &z,
            &b.gamma.value,
            &b.beta.value,
            &b.stats,
            mode,
            T::from_f64_lossy(BN_EPSILON),
        )?;
        Ok((
            BlockTrace {
                cache,
                act: relu(&y),
                merged: None,
            },
            moments,
        ))
    }

    /// Forward pass that leaves the network untouched. In `Train` mode the
    /// batch moments are returned in the trace instead of being folded into
    /// the running statistics.
    pub fn run(&self, input: &Tensor<T>, mode: Mode) -> Result<ForwardTrace<T>> {
        self.check_input(input)?;
        let mut moments = Vec::with_capacity(2 * DEPTH);
        let mut encoder: Vec<BlockTrace<T>> = Vec::with_capacity(DEPTH);
        for (i, b) in self.encoder.iter().enumerate() {
            let x = if i == 0 { input } else { encoder[i - 1].out() };
            let (t, m) = self.run_block(b, x, mode)?;
            encoder.push(t);
            moments.push(m);
        }
        let mut decoder: Vec<BlockTrace<T>> = Vec::with_capacity(DEPTH);
        for (i, b) in self.decoder.iter().enumerate() {
            let x = if i == 0 { encoder[DEPTH - 1].out() } else { decoder[i - 1].out() };
            let (mut t, m) = self.run_block(b, x, mode)?;
            if self.skips_enabled && i + 1 < DEPTH {
                let s = &self.skips[i];
                let proj = conv2d_forward(
                    encoder[DEPTH - 2 - i].out(),
                    &s.weight.value,
                    Some(&s.bias.value),
                    1,
                    s.padding,
                )?;
                t.merged = Some(t.act.add(&proj)?);
            }
            decoder.push(t);
            moments.push(m);
        }
        let z = conv2d_forward(
            decoder[DEPTH - 1].out(),
            &self.head.weight.value,
            Some(&self.head.bias.value),
            1,
            self.head.padding,
        )?;
        let [q, c, s, w] = split_planes(&z);
        let output = MapPlanes {
            quality: sigmoid(&q),
            cos: tanh(&c),
            sin: tanh(&s),
            width: sigmoid(&w),
        };
        Ok(ForwardTrace {
            input: input.clone(),
            encoder,
            decoder,
            moments,
            output,
        })
    }

    /// Forward pass; in `Train` mode the running statistics are updated.
    pub fn forward(&mut self, input: &Tensor<T>, mode: Mode) -> Result<ForwardTrace<T>> {
        let trace = self.run(input, mode)?;
        let momentum = T::from_f64_lossy(BN_MOMENTUM);
        for (stats, m) in self.batchnorm_stats_mut().into_iter().zip(&trace.moments) {
            if let Some(m) = m {
                stats.update(m, momentum);
            }
        }
        Ok(trace)
    }

    /// `Eval`-mode prediction.
    pub fn infer(&self, input: &Tensor<T>) -> Result<MapPlanes<T>> {
        Ok(self.run(input, Mode::Eval)?.output)
    }

    /// Accumulates parameter gradients given the loss gradient with respect
    /// to the activated output planes of `trace`.
    pub fn backward(&mut self, trace: &ForwardTrace<T>, grad: &MapPlanes<T>) -> Result<()> {
        let out = &trace.output;
        let gz = merge_planes([
            &sigmoid_backward(&grad.quality, &out.quality)?,
            &tanh_backward(&grad.cos, &out.cos)?,
            &tanh_backward(&grad.sin, &out.sin)?,
            &sigmoid_backward(&grad.width, &out.width)?,
        ])?;
        let g = conv2d_backward(&gz, trace.decoder[DEPTH - 1].out(), &self.head.weight.value, 1, self.head.padding)?;
        self.head.weight.accumulate(&g.weight)?;
        self.head.bias.accumulate(&g.bias)?;
        let mut g = g.input;
        let mut pending: Vec<Option<Tensor<T>>> = vec![None; DEPTH];
        for i in (0..DEPTH).rev() {
            let t = &trace.decoder[i];
            if t.merged.is_some() {
                let s = &mut self.skips[i];
                let src = trace.encoder[DEPTH - 2 - i].out();
                let sg = conv2d_backward(&g, src, &s.weight.value, 1, s.padding)?;
                s.weight.accumulate(&sg.weight)?;
                s.bias.accumulate(&sg.bias)?;
                pending[DEPTH - 2 - i] = Some(sg.input);
            }
            let x = if i == 0 { trace.encoder[DEPTH - 1].out() } else { trace.decoder[i - 1].out() };
            g = block_backward(&mut self.decoder[i], t, x, &g)?;
        }
        for i in (0..DEPTH).rev() {
            if let Some(p) = pending[i].take() {
                g.add_assign(&p)?;
            }
            let x = if i == 0 { &trace.input } else { trace.encoder[i - 1].out() };
            g = block_backward(&mut self.encoder[i], &trace.encoder[i], x, &g)?;
        }
        Ok(())
    }

    /// The same network with every value converted to `U`.
    pub fn cast<U: Real>(&self) -> GraspFcn<U> {
        let p = |p: &Parameter<T>| Parameter::new(p.name.clone(), p.value.cast());
        let block = |b: &Block<T>| Block {
            weight: p(&b.weight),
            gamma: p(&b.gamma),
            beta: p(&b.beta),
            stats: BatchNormStats {
                mean: b.stats.mean.cast(),
                var: b.stats.var.cast(),
            },
            stride: b.stride,
            padding: b.padding,
            output_padding: b.output_padding,
            transposed: b.transposed,
        };
        let conv = |c: &Conv<T>| Conv {
            weight: p(&c.weight),
            bias: p(&c.bias),
            padding: c.padding,
        };
        GraspFcn {
            config: self.config.clone(),
            encoder: self.encoder.iter().map(block).collect(),
            decoder: self.decoder.iter().map(block).collect(),
            skips: self.skips.iter().map(conv).collect(),
            head: conv(&self.head),
            skips_enabled: self.skips_enabled,
        }
    }
}

/// Backward through ReLU, batch norm and the conv of one block; returns the
/// gradient with respect to the block input.
fn block_backward<T: Real>(b: &mut Block<T>, t: &BlockTrace<T>, x: &Tensor<T>, g: &Tensor<T>) -> Result<Tensor<T>> {
    // relu(y) > 0 exactly where y > 0, so the activation serves as the mask.
    let g = relu_backward(g, &t.act)?;
    let bg = batchnorm2d_backward(&g, &t.cache, &b.gamma.value)?;
    b.gamma.accumulate(&bg.gamma)?;
    b.beta.accumulate(&bg.beta)?;
    let cg = if b.transposed {
        conv_transpose2d_backward(&bg.input, x, &b.weight.value, b.stride, b.padding)?
    } else {
        conv2d_backward(&bg.input, x, &b.weight.value, b.stride, b.padding)?
    };
    b.weight.accumulate(&cg.weight)?;
    Ok(cg.input)
}

fn split_planes<T: Real>(z: &Tensor<T>) -> [Tensor<T>; 4] {
    let [n, _, h, w] = z.dims4("split_planes").expect("head output is 4-D");
    std::array::from_fn(|c| {
        let mut t = Tensor::zeros([n, 1, h, w]);
        for ni in 0..n {
            t.plane_mut(ni, 0).copy_from_slice(z.plane(ni, c));
        }
        t
    })
}

fn merge_planes<T: Real>(planes: [&Tensor<T>; 4]) -> Result<Tensor<T>> {
    let [n, _, h, w] = planes[0].dims4("merge_planes")?;
    let mut z = Tensor::zeros([n, 4, h, w]);
    for (c, p) in planes.iter().enumerate() {
        p.ensure_shape("merge_planes", &[n, 1, h, w])?;
        for ni in 0..n {
            z.plane_mut(ni, c).copy_from_slice(p.plane(ni, 0));
        }
    }
    Ok(z)
}
