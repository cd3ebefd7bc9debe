//! Trainable network over an [`Architecture`], with the latent fusion rules.

use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::arch::{Architecture, BlockKind, FmuMode, GridPos, MNetConfig, NodeSpec, Region, SourceOutput, StreamRole, Transition};
use crate::autodiff::{Tape, Var};
use crate::data::{Predictor, Tile};
use crate::error::{Error, Result};
use crate::param::{ParamId, ParamStore};
use crate::tensor::{Real, Tensor};

/// Merges the 2D-stream and 3D-stream features of one node.
///
/// With a single operand present the merge is a passthrough.
pub fn fmu_merge<T: Real>(tape: &mut Tape<T>, x_a: Option<Var>, x_b: Option<Var>, mode: FmuMode) -> Result<Var> {
    match (x_a, x_b) {
        (Some(a), Some(b)) => match mode {
            FmuMode::Sub => {
                let d = tape.sub(a, b)?;
                Ok(tape.abs(d))
            }
            FmuMode::Sum => tape.add(a, b),
        },
        (Some(x), None) | (None, Some(x)) => Ok(x),
        (None, None) => Err(Error::InvalidArgument("fmu_merge needs at least one operand".into())),
    }
}

#[derive(Debug, Clone)]
struct ConvLayer {
    weight: ParamId,
    bias: ParamId,
    gamma: ParamId,
    beta: ParamId,
    padding: [usize; 3],
}

#[derive(Debug, Clone)]
struct ConvBlock {
    kind: BlockKind,
    layers: [ConvLayer; 2],
}

#[derive(Debug, Clone)]
struct Head {
    node: usize,
    weight: ParamId,
    bias: ParamId,
    loss_weight: f64,
    main: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct AuxOutput {
    pub node: GridPos,
    pub weight: f64,
    pub logits: Var,
}

/// Logits of one forward pass.
#[derive(Debug, Clone)]
pub struct NetOutput {
    pub main: Var,
    pub aux: Vec<AuxOutput>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NodeOutputs {
    pub out2d: Option<Var>,
    pub out3d: Option<Var>,
}

impl NodeOutputs {
    fn select(&self, which: SourceOutput) -> Option<Var> {
        match which {
            SourceOutput::TwoD => self.out2d,
            SourceOutput::ThreeD => self.out3d,
            SourceOutput::Sole => self.out2d.or(self.out3d),
        }
    }

    fn all(&self) -> impl Iterator<Item = Var> + '_ {
        self.out2d.into_iter().chain(self.out3d)
    }
}

/// Inputs of one node after edge transitions were applied.
#[derive(Debug, Clone, Copy, Default)]
pub struct NodeInputs {
    pub raw: Option<Var>,
    pub stream2d: Option<Var>,
    pub stream3d: Option<Var>,
    pub skip2d: Option<Var>,
    pub skip3d: Option<Var>,
}

/// The mesh (or one of its serial subnets) with its parameters.
#[derive(Debug, Clone)]
pub struct MNet<T> {
    config: MNetConfig,
    arch: Architecture,
    params: ParamStore<T>,
    blocks: Vec<Vec<ConvBlock>>,
    heads: Vec<Head>,
}

impl<T: Real> MNet<T> {
    /// Builds parameters for `arch` with fan-in normal initialization scaled
    /// for LeakyReLU, zero biases, unit IN scale and zero IN shift.
    pub fn new(config: &MNetConfig, arch: Architecture, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gain = libm::sqrt(2.0 / (1.0 + config.leaky_slope * config.leaky_slope));
        let mut params = ParamStore::new();
        let mut normal = |params: &mut ParamStore<T>, name: alloc::string::String, dims: &[usize], fan_in: usize| -> Result<ParamId> {
            let std = gain / libm::sqrt(fan_in as f64);
            let dist = Normal::new(0.0, std).map_err(|e| Error::InvalidConfig(format!("{e}")))?;
            let n: usize = dims.iter().product();
            let data = (0..n).map(|_| T::of(dist.sample(&mut rng))).collect();
            Ok(params.add(name, Tensor::from_vec(dims, data)?))
        };
        let mut blocks = Vec::with_capacity(arch.nodes.len());
        for node in &arch.nodes {
            let mut node_blocks = Vec::new();
            for &kind in node.kind.blocks() {
                let [kd, kh, kw] = kind.kernel();
                let prefix = format!("n{}{}.{}", node.pos.row, node.pos.col, kind.label());
                let mut layer = |li: usize, cin: usize| -> Result<ConvLayer> {
                    let cout = node.out_channels;
                    let weight = normal(&mut params, format!("{prefix}.conv{li}.weight"), &[cout, cin, kd, kh, kw], cin * kind.taps())?;
                    let bias = params.add(format!("{prefix}.conv{li}.bias"), Tensor::zeros(&[cout])?);
                    let gamma = params.add(format!("{prefix}.norm{li}.gamma"), Tensor::ones(&[cout])?);
                    let beta = params.add(format!("{prefix}.norm{li}.beta"), Tensor::zeros(&[cout])?);
                    Ok(ConvLayer { weight, bias, gamma, beta, padding: kind.padding() })
                };
                let l1 = layer(1, node.in_channels)?;
                let l2 = layer(2, node.out_channels)?;
                node_blocks.push(ConvBlock { kind, layers: [l1, l2] });
            }
            blocks.push(node_blocks);
        }
        let mut heads = Vec::with_capacity(arch.heads.len());
        for h in &arch.heads {
            let idx = arch
                .node_index(h.node)
                .ok_or_else(|| Error::InvalidConfig(format!("head on missing node {}", h.node)))?;
            let node = &arch.nodes[idx];
            let cin = node.out_channels * node.kind.blocks().len();
            let cout = config.num_classes;
            let tag = if h.main { alloc::string::String::from("main") } else { format!("aux{}{}", h.node.row, h.node.col) };
            let weight = normal(&mut params, format!("head.{tag}.weight"), &[cout, cin, 1, 1, 1], cin)?;
            let bias = params.add(format!("head.{tag}.bias"), Tensor::zeros(&[cout])?);
            heads.push(Head { node: idx, weight, bias, loss_weight: h.weight, main: h.main });
        }
        Ok(MNet { config: config.clone(), arch, params, blocks, heads })
    }

    /// The full mesh for `config`.
    pub fn mesh(config: &MNetConfig, seed: u64) -> Result<Self> {
        Self::new(config, super::arch::build_grid(config)?, seed)
    }

    pub fn config(&self) -> &MNetConfig {
        &self.config
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    /// Exact trainable scalar count.
    pub fn param_count(&self) -> usize {
        self.params.num_scalars()
    }

    /// Trainable scalars owned by the node at `pos` (blocks only).
    pub fn node_param_count(&self, pos: GridPos) -> usize {
        let Some(idx) = self.arch.node_index(pos) else { return 0 };
        self.blocks[idx]
            .iter()
            .flat_map(|b| b.layers.iter())
            .flat_map(|l| [l.weight, l.bias, l.gamma, l.beta])
            .map(|id| self.params.get(id).map(|p| p.value.len()).unwrap_or(0))
            .sum()
    }

    /// Smallest accepted spatial extents `(D, H, W)`.
    pub fn min_input_extents(&self) -> [usize; 3] {
        let (a, b) = self.arch.max_exponents();
        [1 << a, 1 << b, 1 << b]
    }

    /// Rejects inputs whose extents cannot survive every pooling.
    pub fn check_input(&self, dims: &[usize]) -> Result<()> {
        let &[_, c, d, h, w] = dims else {
            return Err(Error::Rank { got: dims.len() });
        };
        if c != self.config.in_channels {
            return Err(Error::AxisMismatch { op: "forward", axis: "channel", expected: self.config.in_channels, actual: c });
        }
        let (a, b) = self.arch.max_exponents();
        for (axis, extent, pools) in [("depth", d, a), ("height", h, b), ("width", w, b)] {
            if extent >> pools == 0 {
                return Err(Error::InputTooSmall { axis, extent, poolings: pools, min: 1 << pools });
            }
        }
        Ok(())
    }

    /// Spatial extents produced at exponents `(a, b)` for an input of `[d, h, w]`.
    pub fn extents_at(input: [usize; 3], a: usize, b: usize) -> [usize; 3] {
        [input[0] >> a, input[1] >> b, input[2] >> b]
    }

    /// Output shapes `(main, aux...)` for an input shape, without running the net.
    pub fn output_shapes(&self, dims: &[usize]) -> Result<Vec<(GridPos, [usize; 5])>> {
        self.check_input(dims)?;
        let input = [dims[2], dims[3], dims[4]];
        Ok(self
            .heads
            .iter()
            .map(|h| {
                let node = &self.arch.nodes[h.node];
                let [d, hh, w] = Self::extents_at(input, node.a, node.b);
                (node.pos, [dims[0], self.config.num_classes, d, hh, w])
            })
            .collect())
    }

    fn conv_layer(&self, tape: &mut Tape<T>, vars: &[Var], x: Var, layer: &ConvLayer) -> Result<Var> {
        let y = tape.conv3d(x, vars[layer.weight.index()], vars[layer.bias.index()], layer.padding)?;
        let y = tape.instance_norm(y, vars[layer.gamma.index()], vars[layer.beta.index()], self.config.norm_eps)?;
        Ok(tape.leaky_relu(y, self.config.leaky_slope))
    }

    /// Builds the block input of a node from its resolved inputs and runs
    /// every block it holds.
    pub fn node_forward(&self, tape: &mut Tape<T>, vars: &[Var], idx: usize, inputs: NodeInputs) -> Result<NodeOutputs> {
        let node: &NodeSpec = &self.arch.nodes[idx];
        let mode = self.config.fmu_mode;
        let block_in = if let Some(raw) = inputs.raw {
            raw
        } else {
            match node.region {
                Region::Encoder => fmu_merge(tape, inputs.stream2d, inputs.stream3d, mode)?,
                Region::Decoder => {
                    let f_m = fmu_merge(tape, inputs.stream2d, inputs.stream3d, mode)?;
                    if inputs.skip2d.is_some() || inputs.skip3d.is_some() {
                        let f_e = fmu_merge(tape, inputs.skip2d, inputs.skip3d, mode)?;
                        tape.concat_channels(f_e, f_m)?
                    } else {
                        f_m
                    }
                }
            }
        };
        let channels = tape.shape(block_in).dims()[1];
        if channels != node.in_channels {
            return Err(Error::ChannelSchedule {
                row: node.pos.row,
                col: node.pos.col,
                expected: node.in_channels,
                actual: channels,
            });
        }
        let mut out = NodeOutputs::default();
        for block in &self.blocks[idx] {
            let h = self.conv_layer(tape, vars, block_in, &block.layers[0])?;
            let y = self.conv_layer(tape, vars, h, &block.layers[1])?;
            match block.kind {
                BlockKind::TwoD => out.out2d = Some(y),
                BlockKind::ThreeD => out.out3d = Some(y),
            }
        }
        Ok(out)
    }

    /// Registers every parameter on `tape`; the result is indexed by
    /// [`ParamId::index`].
    pub fn param_vars(&self, tape: &mut Tape<T>) -> Result<Vec<Var>> {
        self.params.iter().map(|p| tape.param(&self.params, p.id)).collect()
    }

    /// Runs the network on `[N, Cin, D, H, W]` and returns main and auxiliary
    /// logits. Nodes run in row-major order.
    pub fn forward(&self, tape: &mut Tape<T>, input: Var) -> Result<NetOutput> {
        let dims = tape.shape(input).dims().to_vec();
        self.check_input(&dims)?;
        let spatial = [dims[2], dims[3], dims[4]];
        let vars = self.param_vars(tape)?;
        let mut outputs: Vec<NodeOutputs> = Vec::with_capacity(self.arch.nodes.len());
        for (idx, node) in self.arch.nodes.iter().enumerate() {
            let mut inputs = NodeInputs::default();
            if node.incoming.is_empty() {
                inputs.raw = Some(input);
            }
            for &e in &node.incoming {
                let edge = &self.arch.edges[e];
                let src = self
                    .arch
                    .node_index(edge.source)
                    .filter(|&s| s < idx)
                    .ok_or_else(|| Error::InvalidConfig(format!("edge {} -> {} is not topological", edge.source, node.pos)))?;
                let x = outputs[src].select(edge.source_output).ok_or_else(|| {
                    Error::InvalidConfig(format!("node {} has no {:?} output", edge.source, edge.source_output))
                })?;
                let y = match edge.transition {
                    Transition::Pool122 | Transition::Pool222 => tape.maxpool3d(x, edge.transition.factor())?,
                    Transition::Up122 | Transition::Up222 => {
                        tape.upsample_trilinear(x, Self::extents_at(spatial, node.a, node.b))?
                    }
                    Transition::SkipIdentity => x,
                };
                let slot = match (edge.transition == Transition::SkipIdentity, edge.role) {
                    (false, StreamRole::TwoDStream) => &mut inputs.stream2d,
                    (false, StreamRole::ThreeDStream) => &mut inputs.stream3d,
                    (true, StreamRole::TwoDStream) => &mut inputs.skip2d,
                    (true, StreamRole::ThreeDStream) => &mut inputs.skip3d,
                };
                *slot = Some(y);
            }
            outputs.push(self.node_forward(tape, &vars, idx, inputs)?);
        }
        let mut main = None;
        let mut aux = Vec::new();
        for head in &self.heads {
            let feats: Vec<Var> = outputs[head.node].all().collect();
            let mut x = feats[0];
            for &f in &feats[1..] {
                x = tape.concat_channels(x, f)?;
            }
            let logits = tape.conv3d(x, vars[head.weight.index()], vars[head.bias.index()], [0, 0, 0])?;
            if head.main {
                main = Some(logits);
            } else {
                aux.push(AuxOutput { node: self.arch.nodes[head.node].pos, weight: head.loss_weight, logits });
            }
        }
        let main = main.ok_or_else(|| Error::MissingBranch("main".into()))?;
        Ok(NetOutput { main, aux })
    }
}

impl<T: Real> MNet<T> {
    /// Main-head class probabilities `[N, K, D, H, W]` for `input`.
    pub fn predict_probs(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let x = tape.constant(input.clone());
        let out = self.forward(&mut tape, x)?;
        let p = tape.softmax_channels(out.main)?;
        Ok(tape.value(p).clone())
    }
}

impl<T: Real> Predictor for MNet<T> {
    fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    fn predict(&self, tile: &Tile) -> Result<Tensor<f32>> {
        Ok(self.predict_probs(&tile.image.cast::<T>())?.cast::<f32>())
    }
}
