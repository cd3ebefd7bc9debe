//! Declarative description of the mesh: which modules exist, what blocks they
//! hold, at what resolution they run and how they are wired.
//!
//! Rows `i` and columns `j` are 1-based. A node is in the encoder region when
//! `i + j <= n + 1`. Its resolution exponents count the ×2 downsamplings
//! applied along z (`a`) and in-plane (`b`):
//!
//! | region  | a       | b           |
//! |---------|---------|-------------|
//! | encoder | i - 1   | i + j - 2   |
//! | decoder | n - j   | 2n - i - j  |

use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum FmuMode {
    /// `abs(x_a - x_b)`
    Sub,
    /// `x_a + x_b`
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct MNetConfig {
    pub grid_n: usize,
    pub base_channels: usize,
    pub channel_growth: usize,
    pub fmu_mode: FmuMode,
    pub in_channels: usize,
    pub num_classes: usize,
    pub leaky_slope: f64,
    pub norm_eps: f64,
    pub precision: Precision,
}

impl Default for MNetConfig {
    fn default() -> Self {
        MNetConfig {
            grid_n: 5,
            base_channels: 32,
            channel_growth: 16,
            fmu_mode: FmuMode::Sub,
            in_channels: 1,
            num_classes: 3,
            leaky_slope: 0.01,
            norm_eps: 1e-5,
            precision: Precision::F32,
        }
    }
}

impl MNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_n < 3 || self.grid_n.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!("grid_n must be odd and >= 3, got {}", self.grid_n)));
        }
        if self.base_channels == 0 || self.channel_growth == 0 {
            return Err(Error::InvalidConfig("base_channels and channel_growth must be >= 1".into()));
        }
        if self.in_channels == 0 {
            return Err(Error::InvalidConfig("in_channels must be >= 1".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig("num_classes must be >= 2".into()));
        }
        if !(self.leaky_slope >= 0.0 && self.leaky_slope.is_finite()) {
            return Err(Error::InvalidConfig("leaky_slope must be finite and >= 0".into()));
        }
        if !(self.norm_eps > 0.0) {
            return Err(Error::InvalidConfig("norm_eps must be > 0".into()));
        }
        Ok(())
    }
}

/// `K = base + growth * (depth - 1)` for `1 <= depth <= grid_n`.
pub fn channels_at_depth(depth: usize, config: &MNetConfig) -> Result<usize> {
    if depth == 0 || depth > config.grid_n {
        return Err(Error::DepthOutOfRange { depth, max: config.grid_n });
    }
    Ok(config.base_channels + config.channel_growth * (depth - 1))
}

/// 1-based grid coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GridPos {
    pub row: usize,
    pub col: usize,
}

impl GridPos {
    pub const fn new(row: usize, col: usize) -> Self {
        GridPos { row, col }
    }
}

impl fmt::Display for GridPos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    TwoD,
    ThreeD,
    Both,
}

impl NodeKind {
    pub fn blocks(self) -> &'static [BlockKind] {
        match self {
            NodeKind::TwoD => &[BlockKind::TwoD],
            NodeKind::ThreeD => &[BlockKind::ThreeD],
            NodeKind::Both => &[BlockKind::TwoD, BlockKind::ThreeD],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            NodeKind::TwoD => "2D",
            NodeKind::ThreeD => "3D",
            NodeKind::Both => "2D+3D",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BlockKind {
    /// Two (1,3,3) conv layers.
    TwoD,
    /// Two (3,3,3) conv layers.
    ThreeD,
}

impl BlockKind {
    pub fn kernel(self) -> [usize; 3] {
        match self {
            BlockKind::TwoD => [1, 3, 3],
            BlockKind::ThreeD => [3, 3, 3],
        }
    }

    pub fn padding(self) -> [usize; 3] {
        match self {
            BlockKind::TwoD => [0, 1, 1],
            BlockKind::ThreeD => [1, 1, 1],
        }
    }

    pub fn taps(self) -> usize {
        self.kernel().iter().product()
    }

    pub fn label(self) -> &'static str {
        match self {
            BlockKind::TwoD => "2d",
            BlockKind::ThreeD => "3d",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    Encoder,
    Decoder,
}

/// Which output of the source node an edge carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SourceOutput {
    TwoD,
    ThreeD,
    /// The only output of a single-block node.
    Sole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Transition {
    /// Max pool (1,2,2).
    Pool122,
    /// Max pool (2,2,2).
    Pool222,
    /// Trilinear upsample (1,2,2).
    Up122,
    /// Trilinear upsample (2,2,2).
    Up222,
    SkipIdentity,
}

impl Transition {
    /// Change of (a, b) from source to receiver.
    pub fn delta(self) -> (isize, isize) {
        match self {
            Transition::Pool122 => (0, 1),
            Transition::Pool222 => (1, 1),
            Transition::Up122 => (0, -1),
            Transition::Up222 => (-1, -1),
            Transition::SkipIdentity => (0, 0),
        }
    }

    pub fn from_delta(da: isize, db: isize) -> Option<Self> {
        match (da, db) {
            (0, 1) => Some(Transition::Pool122),
            (1, 1) => Some(Transition::Pool222),
            (0, -1) => Some(Transition::Up122),
            (-1, -1) => Some(Transition::Up222),
            (0, 0) => Some(Transition::SkipIdentity),
            _ => None,
        }
    }

    pub fn is_pool(self) -> bool {
        matches!(self, Transition::Pool122 | Transition::Pool222)
    }

    pub fn is_up(self) -> bool {
        matches!(self, Transition::Up122 | Transition::Up222)
    }

    /// Per-axis (z, y, x) scale factor of a pool or upsample.
    pub fn factor(self) -> [usize; 3] {
        match self {
            Transition::Pool122 | Transition::Up122 => [1, 2, 2],
            Transition::Pool222 | Transition::Up222 => [2, 2, 2],
            Transition::SkipIdentity => [1, 1, 1],
        }
    }

    /// True for the (1,2,2) transitions that carry 2D-block outputs.
    pub fn is_in_plane(self) -> bool {
        matches!(self, Transition::Pool122 | Transition::Up122)
    }

    pub fn label(self) -> &'static str {
        match self {
            Transition::Pool122 => "pool(1,2,2)",
            Transition::Pool222 => "pool(2,2,2)",
            Transition::Up122 => "up(1,2,2)",
            Transition::Up222 => "up(2,2,2)",
            Transition::SkipIdentity => "skip",
        }
    }
}

/// Role of an incoming feature at the receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamRole {
    TwoDStream,
    ThreeDStream,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSpec {
    pub source: GridPos,
    pub source_output: SourceOutput,
    pub target: GridPos,
    pub transition: Transition,
    pub role: StreamRole,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub pos: GridPos,
    pub kind: NodeKind,
    pub region: Region,
    pub a: usize,
    pub b: usize,
    /// `b + 1`.
    pub depth: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Indices into [`Architecture::edges`].
    pub incoming: Vec<usize>,
    pub skip_source: Option<GridPos>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadSpec {
    pub node: GridPos,
    /// Loss weight; 1 for the main head.
    pub weight: f64,
    pub main: bool,
}

/// A buildable network: nodes in evaluation order plus edges and heads.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub grid_n: usize,
    pub nodes: Vec<NodeSpec>,
    pub edges: Vec<EdgeSpec>,
    pub heads: Vec<HeadSpec>,
}

pub fn region_of(pos: GridPos, n: usize) -> Region {
    if pos.row + pos.col <= n + 1 {
        Region::Encoder
    } else {
        Region::Decoder
    }
}

/// Resolution exponents `(a, b)` of a grid position.
pub fn exponents(pos: GridPos, n: usize) -> (usize, usize) {
    let (i, j) = (pos.row, pos.col);
    match region_of(pos, n) {
        Region::Encoder => (i - 1, i + j - 2),
        Region::Decoder => (n - j, 2 * n - i - j),
    }
}

pub fn mesh_kind(pos: GridPos, n: usize) -> NodeKind {
    let (i, j) = (pos.row, pos.col);
    if (i == 1 && j == 1) || (i == n && j == n) {
        NodeKind::Both
    } else if i == 1 || j == n {
        NodeKind::TwoD
    } else if j == 1 || i == n {
        NodeKind::ThreeD
    } else {
        NodeKind::Both
    }
}

/// Encoder node whose features skip into decoder node `pos`.
pub fn mirror(pos: GridPos, n: usize) -> GridPos {
    GridPos::new(n + 1 - pos.col, n + 1 - pos.row)
}

/// Loss weight of an auxiliary head at in-plane level `b`: `(1/2)^b`, which
/// equals `(1/2)^(n-i)` for the heads at `(i, n)` and `(n, i)`.
pub fn aux_weight(b: usize) -> f64 {
    libm::pow(0.5, b as f64)
}

fn output_for(kind: NodeKind, transition: Transition) -> SourceOutput {
    match kind {
        NodeKind::Both if transition.is_in_plane() => SourceOutput::TwoD,
        NodeKind::Both => SourceOutput::ThreeD,
        _ => SourceOutput::Sole,
    }
}

fn role_for_transition(t: Transition) -> StreamRole {
    if t.is_in_plane() {
        StreamRole::TwoDStream
    } else {
        StreamRole::ThreeDStream
    }
}

impl Architecture {
    pub fn node(&self, pos: GridPos) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.pos == pos)
    }

    pub fn node_index(&self, pos: GridPos) -> Option<usize> {
        self.nodes.iter().position(|n| n.pos == pos)
    }

    pub fn main_head(&self) -> &HeadSpec {
        self.heads.iter().find(|h| h.main).expect("architecture without main head")
    }

    /// Largest `(a, b)` over all nodes.
    pub fn max_exponents(&self) -> (usize, usize) {
        self.nodes.iter().fold((0, 0), |(a, b), n| (a.max(n.a), b.max(n.b)))
    }

    /// Count of nodes per kind: `(TwoD, ThreeD, Both)`.
    pub fn kind_histogram(&self) -> (usize, usize, usize) {
        self.nodes.iter().fold((0, 0, 0), |(t, d, b), n| match n.kind {
            NodeKind::TwoD => (t + 1, d, b),
            NodeKind::ThreeD => (t, d + 1, b),
            NodeKind::Both => (t, d, b + 1),
        })
    }

    /// Checks the exponent delta of every edge against its transition and
    /// returns the offending edge index on failure.
    pub fn check_edge_deltas(&self) -> core::result::Result<(), usize> {
        for (k, e) in self.edges.iter().enumerate() {
            let (Some(s), Some(t)) = (self.node(e.source), self.node(e.target)) else {
                return Err(k);
            };
            let da = t.a as isize - s.a as isize;
            let db = t.b as isize - s.b as isize;
            if Transition::from_delta(da, db) != Some(e.transition) {
                return Err(k);
            }
        }
        Ok(())
    }

    /// Fills `in_channels` from the incoming edges and checks that FMU
    /// operands agree.
    fn resolve_channels(&mut self, raw_in: usize) -> Result<()> {
        for idx in 0..self.nodes.len() {
            let node = &self.nodes[idx];
            if node.incoming.is_empty() {
                self.nodes[idx].in_channels = raw_in;
                continue;
            }
            let mut stream: Option<usize> = None;
            let mut skip: Option<usize> = None;
            for &e in &node.incoming {
                let edge = &self.edges[e];
                let src = self
                    .node(edge.source)
                    .ok_or_else(|| Error::InvalidConfig(format!("edge from missing node {}", edge.source)))?;
                let slot = if edge.transition == Transition::SkipIdentity { &mut skip } else { &mut stream };
                match *slot {
                    Some(c) if c != src.out_channels => {
                        return Err(Error::ChannelSchedule {
                            row: node.pos.row,
                            col: node.pos.col,
                            expected: c,
                            actual: src.out_channels,
                        })
                    }
                    _ => *slot = Some(src.out_channels),
                }
            }
            let channels = stream.unwrap_or(0) + skip.unwrap_or(0);
            self.nodes[idx].in_channels = channels;
        }
        Ok(())
    }
}

fn make_node(pos: GridPos, kind: NodeKind, n: usize, config: &MNetConfig) -> Result<NodeSpec> {
    let (a, b) = exponents(pos, n);
    let region = region_of(pos, n);
    Ok(NodeSpec {
        pos,
        kind,
        region,
        a,
        b,
        depth: b + 1,
        in_channels: 0,
        out_channels: channels_at_depth(b + 1, config)?,
        incoming: Vec::new(),
        skip_source: None,
    })
}

/// The full `n x n` mesh.
pub fn build_grid(config: &MNetConfig) -> Result<Architecture> {
    config.validate()?;
    let n = config.grid_n;
    let mut nodes = Vec::with_capacity(n * n);
    for i in 1..=n {
        for j in 1..=n {
            let pos = GridPos::new(i, j);
            nodes.push(make_node(pos, mesh_kind(pos, n), n, config)?);
        }
    }
    let mut edges = Vec::new();
    for i in 1..=n {
        for j in 1..=n {
            let pos = GridPos::new(i, j);
            let stream = |src: GridPos, t: Transition| EdgeSpec {
                source: src,
                source_output: output_for(mesh_kind(src, n), t),
                target: pos,
                transition: t,
                role: role_for_transition(t),
            };
            match region_of(pos, n) {
                Region::Encoder => {
                    if j > 1 {
                        add_edge(&mut nodes, &mut edges, n, stream(GridPos::new(i, j - 1), Transition::Pool122));
                    }
                    if i > 1 {
                        add_edge(&mut nodes, &mut edges, n, stream(GridPos::new(i - 1, j), Transition::Pool222));
                    }
                }
                Region::Decoder => {
                    add_edge(&mut nodes, &mut edges, n, stream(GridPos::new(i - 1, j), Transition::Up122));
                    add_edge(&mut nodes, &mut edges, n, stream(GridPos::new(i, j - 1), Transition::Up222));
                    let m = mirror(pos, n);
                    nodes[(i - 1) * n + (j - 1)].skip_source = Some(m);
                    let outs: &[(SourceOutput, StreamRole)] = match mesh_kind(m, n) {
                        NodeKind::Both => &[
                            (SourceOutput::TwoD, StreamRole::TwoDStream),
                            (SourceOutput::ThreeD, StreamRole::ThreeDStream),
                        ],
                        NodeKind::TwoD => &[(SourceOutput::Sole, StreamRole::TwoDStream)],
                        NodeKind::ThreeD => &[(SourceOutput::Sole, StreamRole::ThreeDStream)],
                    };
                    for &(source_output, role) in outs {
                        let e = EdgeSpec { source: m, source_output, target: pos, transition: Transition::SkipIdentity, role };
                        add_edge(&mut nodes, &mut edges, n, e);
                    }
                }
            }
        }
    }
    let heads = vec_heads(n);
    let mut arch = Architecture { grid_n: n, nodes, edges, heads };
    arch.resolve_channels(config.in_channels)?;
    debug_assert!(arch.check_edge_deltas().is_ok());
    Ok(arch)
}

fn add_edge(nodes: &mut [NodeSpec], edges: &mut Vec<EdgeSpec>, n: usize, e: EdgeSpec) {
    let t = (e.target.row - 1) * n + (e.target.col - 1);
    nodes[t].incoming.push(edges.len());
    edges.push(e);
}

fn vec_heads(n: usize) -> Vec<HeadSpec> {
    let mut heads = alloc::vec![HeadSpec { node: GridPos::new(n, n), weight: 1.0, main: true }];
    for i in 2..n {
        let w = aux_weight(n - i);
        heads.push(HeadSpec { node: GridPos::new(i, n), weight: w, main: false });
        heads.push(HeadSpec { node: GridPos::new(n, i), weight: w, main: false });
    }
    heads
}

/// One step of a monotone path through the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Move {
    Right,
    Down,
}

/// A serial subnet: a monotone right/down path from `(1,1)` to `(n,n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SerialPath {
    pub grid_n: usize,
    pub moves: Vec<Move>,
    pub nodes: Vec<GridPos>,
    /// Transition into `nodes[k + 1]`.
    pub transitions: Vec<Transition>,
    /// Block used at each node.
    pub blocks: Vec<BlockKind>,
}

impl SerialPath {
    pub fn from_moves(grid_n: usize, moves: &[Move]) -> Result<Self> {
        let steps = 2 * (grid_n - 1);
        let rights = moves.iter().filter(|&&m| m == Move::Right).count();
        if moves.len() != steps || rights != grid_n - 1 {
            return Err(Error::InvalidPath(format!(
                "need {} right and {} down moves for grid {}",
                grid_n - 1,
                grid_n - 1,
                grid_n
            )));
        }
        let mut nodes = alloc::vec![GridPos::new(1, 1)];
        let mut transitions = Vec::with_capacity(steps);
        for &m in moves {
            let p = *nodes.last().unwrap();
            let q = match m {
                Move::Right => GridPos::new(p.row, p.col + 1),
                Move::Down => GridPos::new(p.row + 1, p.col),
            };
            let t = match (region_of(q, grid_n), m) {
                (Region::Encoder, Move::Right) => Transition::Pool122,
                (Region::Encoder, Move::Down) => Transition::Pool222,
                (Region::Decoder, Move::Down) => Transition::Up122,
                (Region::Decoder, Move::Right) => Transition::Up222,
            };
            nodes.push(q);
            transitions.push(t);
        }
        let blocks = (0..nodes.len())
            .map(|k| match mesh_kind(nodes[k], grid_n) {
                NodeKind::TwoD => BlockKind::TwoD,
                NodeKind::ThreeD => BlockKind::ThreeD,
                NodeKind::Both => {
                    let t = if k < transitions.len() { transitions[k] } else { transitions[k - 1] };
                    if t.is_in_plane() {
                        BlockKind::TwoD
                    } else {
                        BlockKind::ThreeD
                    }
                }
            })
            .collect();
        Ok(SerialPath { grid_n, moves: moves.to_vec(), nodes, transitions, blocks })
    }

    /// Parses a move string such as `"DDDDRRRR"`.
    pub fn parse(grid_n: usize, id: &str) -> Result<Self> {
        let moves = id
            .chars()
            .map(|c| match c {
                'R' | 'r' => Ok(Move::Right),
                'D' | 'd' => Ok(Move::Down),
                other => Err(Error::InvalidPath(format!("unexpected move {other:?} in {id:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_moves(grid_n, &moves)
    }

    pub fn id(&self) -> alloc::string::String {
        self.moves.iter().map(|m| if *m == Move::Right { 'R' } else { 'D' }).collect()
    }

    /// Column 1 then row n: all (2,2,2) transitions.
    pub fn three_d(grid_n: usize) -> Self {
        let mut moves = alloc::vec![Move::Down; grid_n - 1];
        moves.extend(core::iter::repeat_n(Move::Right, grid_n - 1));
        Self::from_moves(grid_n, &moves).expect("valid by construction")
    }

    /// Row 1 then column n: all (1,2,2) transitions.
    pub fn two_d(grid_n: usize) -> Self {
        let mut moves = alloc::vec![Move::Right; grid_n - 1];
        moves.extend(core::iter::repeat_n(Move::Down, grid_n - 1));
        Self::from_moves(grid_n, &moves).expect("valid by construction")
    }

    pub fn pool_count(&self) -> usize {
        self.transitions.iter().filter(|t| t.is_pool()).count()
    }

    pub fn up_count(&self) -> usize {
        self.transitions.iter().filter(|t| t.is_up()).count()
    }

    /// Exponents after replaying every transition from `(0, 0)`.
    pub fn final_exponents(&self) -> (isize, isize) {
        self.transitions.iter().fold((0, 0), |(a, b), t| {
            let (da, db) = t.delta();
            (a + da, b + db)
        })
    }
}

/// All monotone paths `(1,1) -> (n,n)`, lexicographic with `Down < Right`.
pub fn enumerate_serial_subnets(config: &MNetConfig) -> Vec<SerialPath> {
    let n = config.grid_n;
    let mut out = Vec::new();
    let mut moves = Vec::with_capacity(2 * (n - 1));
    fn rec(n: usize, r: usize, d: usize, moves: &mut Vec<Move>, out: &mut Vec<SerialPath>) {
        if r == n - 1 && d == n - 1 {
            out.push(SerialPath::from_moves(n, moves).expect("balanced path"));
            return;
        }
        if d < n - 1 {
            moves.push(Move::Down);
            rec(n, r, d + 1, moves, out);
            moves.pop();
        }
        if r < n - 1 {
            moves.push(Move::Right);
            rec(n, r + 1, d, moves, out);
            moves.pop();
        }
    }
    rec(n, 0, 0, &mut moves, &mut out);
    out
}

/// A standalone serial encoder-decoder made of the blocks along `path`.
///
/// A decoder node receives a skip from the path's encoder node with equal
/// `(a, b)` when one exists. Auxiliary heads sit on every decoder node but the
/// last, weighted `(1/2)^b`.
pub fn extract_subnet(config: &MNetConfig, path: &SerialPath) -> Result<Architecture> {
    config.validate()?;
    let n = config.grid_n;
    if path.grid_n != n {
        return Err(Error::InvalidPath(format!("path for grid {} used with grid {}", path.grid_n, n)));
    }
    let rebuilt = SerialPath::from_moves(n, &path.moves)?;
    if rebuilt != *path {
        return Err(Error::InvalidPath("path fields are inconsistent with its moves".into()));
    }
    let mut nodes = Vec::with_capacity(path.nodes.len());
    for (k, &pos) in path.nodes.iter().enumerate() {
        let kind = match path.blocks[k] {
            BlockKind::TwoD => NodeKind::TwoD,
            BlockKind::ThreeD => NodeKind::ThreeD,
        };
        nodes.push(make_node(pos, kind, n, config)?);
    }
    let mut edges = Vec::new();
    for k in 1..nodes.len() {
        let t = path.transitions[k - 1];
        nodes[k].incoming.push(edges.len());
        edges.push(EdgeSpec {
            source: path.nodes[k - 1],
            source_output: SourceOutput::Sole,
            target: path.nodes[k],
            transition: t,
            role: role_for_transition(t),
        });
        if nodes[k].region == Region::Decoder {
            let (a, b) = (nodes[k].a, nodes[k].b);
            let skip = nodes
                .iter()
                .take(k)
                .find(|m| m.region == Region::Encoder && m.a == a && m.b == b)
                .map(|m| (m.pos, m.kind));
            if let Some((src, kind)) = skip {
                nodes[k].skip_source = Some(src);
                nodes[k].incoming.push(edges.len());
                edges.push(EdgeSpec {
                    source: src,
                    source_output: SourceOutput::Sole,
                    target: path.nodes[k],
                    transition: Transition::SkipIdentity,
                    role: if kind == NodeKind::TwoD { StreamRole::TwoDStream } else { StreamRole::ThreeDStream },
                });
            }
        }
    }
    let last = *path.nodes.last().unwrap();
    let mut heads = alloc::vec![HeadSpec { node: last, weight: 1.0, main: true }];
    for node in &nodes {
        if node.region == Region::Decoder && node.pos != last {
            heads.push(HeadSpec { node: node.pos, weight: aux_weight(node.b), main: false });
        }
    }
    let mut arch = Architecture { grid_n: n, nodes, edges, heads };
    arch.resolve_channels(config.in_channels)?;
    debug_assert!(arch.check_edge_deltas().is_ok());
    Ok(arch)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpacingAt {
    pub spacing_mm: [f64; 3],
    pub isotropic: bool,
}

fn spacing_at(spacing_mm: [f64; 3]) -> SpacingAt {
    let max = spacing_mm.iter().cloned().fold(f64::MIN, f64::max);
    let min = spacing_mm.iter().cloned().fold(f64::MAX, f64::min);
    SpacingAt { spacing_mm, isotropic: (max - min) <= 1e-9 * max }
}

/// Physical voxel spacing after each transition, starting with the input.
///
/// Pools multiply the affected axes' spacing by 2; upsamples divide it.
pub fn physical_spacing_along_path(input_spacing_mm: [f64; 3], transitions: &[Transition]) -> Result<Vec<SpacingAt>> {
    if input_spacing_mm.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::InvalidArgument("spacings must be positive".into()));
    }
    let mut cur = input_spacing_mm;
    let mut out = alloc::vec![spacing_at(cur)];
    for &t in transitions {
        let f = t.factor();
        for a in 0..3 {
            let k = f[a] as f64;
            if t.is_pool() {
                cur[a] *= k;
            } else if t.is_up() {
                cur[a] /= k;
            }
        }
        out.push(spacing_at(cur));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> MNetConfig {
        MNetConfig::default()
    }

    #[test]
    fn channel_schedule() {
        let c = cfg();
        let ks: Vec<usize> = (1..=5).map(|d| channels_at_depth(d, &c).unwrap()).collect();
        assert_eq!(ks, [32, 48, 64, 80, 96]);
        assert!(matches!(channels_at_depth(0, &c), Err(Error::DepthOutOfRange { .. })));
        assert!(channels_at_depth(6, &c).is_err());
    }

    #[test]
    fn grid_kinds_and_exponents() {
        let arch = build_grid(&cfg()).unwrap();
        assert_eq!(arch.nodes.len(), 25);
        assert_eq!(arch.kind_histogram(), (7, 7, 11));
        assert_eq!(arch.node(GridPos::new(3, 1)).unwrap().kind, NodeKind::ThreeD);
        assert_eq!(arch.node(GridPos::new(1, 3)).unwrap().kind, NodeKind::TwoD);
        let bottleneck = arch.node(GridPos::new(5, 1)).unwrap();
        assert_eq!((bottleneck.a, bottleneck.b), (4, 4));
        let out = arch.node(GridPos::new(5, 5)).unwrap();
        assert_eq!((out.a, out.b, out.skip_source), (0, 0, Some(GridPos::new(1, 1))));
        assert!(arch.check_edge_deltas().is_ok());
        for node in &arch.nodes {
            assert!(node.a <= node.b && node.b <= 4);
        }
    }

    #[test]
    fn channel_propagation_examples() {
        let arch = build_grid(&cfg()).unwrap();
        let n22 = arch.node(GridPos::new(2, 2)).unwrap();
        assert_eq!((n22.in_channels, n22.out_channels), (48, 64));
        let n44 = arch.node(GridPos::new(4, 4)).unwrap();
        assert_eq!((n44.in_channels, n44.out_channels), (144, 64));
        let n11 = arch.node(GridPos::new(1, 1)).unwrap();
        assert_eq!((n11.in_channels, n11.out_channels), (1, 32));
    }

    #[test]
    fn mirror_is_involution_onto_encoder() {
        let n = 5;
        for i in 1..=n {
            for j in 1..=n {
                let p = GridPos::new(i, j);
                if region_of(p, n) == Region::Decoder {
                    let m = mirror(p, n);
                    assert_eq!(region_of(m, n), Region::Encoder);
                    assert_eq!(exponents(m, n), exponents(p, n));
                    assert_eq!(mirror(m, n), p);
                }
            }
        }
    }

    #[test]
    fn subnet_counts() {
        assert_eq!(enumerate_serial_subnets(&cfg()).len(), 70);
        let c3 = MNetConfig { grid_n: 3, ..cfg() };
        assert_eq!(enumerate_serial_subnets(&c3).len(), 6);
        for p in enumerate_serial_subnets(&cfg()) {
            assert_eq!((p.pool_count(), p.up_count()), (4, 4));
            assert_eq!(p.final_exponents(), (0, 0));
        }
    }

    #[test]
    fn pure_subnets() {
        let p3 = SerialPath::three_d(5);
        assert!(p3.transitions[..4].iter().all(|&t| t == Transition::Pool222));
        assert!(p3.transitions[4..].iter().all(|&t| t == Transition::Up222));
        assert!(p3.blocks.iter().all(|&b| b == BlockKind::ThreeD));
        let p2 = SerialPath::two_d(5);
        assert!(p2.transitions.iter().all(|t| t.is_in_plane()));
        assert!(p2.blocks.iter().all(|&b| b == BlockKind::TwoD));
        assert_eq!(p3.id(), "DDDDRRRR");
        assert_eq!(SerialPath::parse(5, "RRRRDDDD").unwrap(), p2);
        assert!(SerialPath::parse(5, "RRRDDDD").is_err());
        assert!(SerialPath::parse(5, "RRRRDDDX").is_err());
    }

    #[test]
    fn subnet_skips_for_pure_paths() {
        let arch = extract_subnet(&cfg(), &SerialPath::three_d(5)).unwrap();
        assert_eq!(arch.nodes.len(), 9);
        let skips = arch.edges.iter().filter(|e| e.transition == Transition::SkipIdentity).count();
        assert_eq!(skips, 4);
        assert_eq!(arch.heads.len(), 4);
        assert_eq!(arch.node(GridPos::new(5, 5)).unwrap().in_channels, 48 + 32);
    }

    #[test]
    fn spacing_example() {
        let s = physical_spacing_along_path([4.0, 1.0, 1.0], &[Transition::Pool122, Transition::Pool122]).unwrap();
        assert_eq!(s.last().unwrap().spacing_mm, [4.0, 4.0, 4.0]);
        assert!(s.last().unwrap().isotropic);
        assert!(!s[0].isotropic);
        let e = physical_spacing_along_path([4.0, 1.0, 1.0], &[]).unwrap();
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].spacing_mm, [4.0, 1.0, 1.0]);
        let p = physical_spacing_along_path([4.0, 1.0, 1.0], &[Transition::Pool222]).unwrap();
        assert_eq!(p[1].spacing_mm, [8.0, 2.0, 2.0]);
    }
}
