//! The mesh architecture: grid description, subnet analysis and the trainable model.

pub mod arch;
pub mod model;

pub use arch::{
    build_grid, channels_at_depth, enumerate_serial_subnets, extract_subnet, physical_spacing_along_path,
    Architecture, BlockKind, EdgeSpec, FmuMode, GridPos, HeadSpec, MNetConfig, Move, NodeKind, NodeSpec, Precision,
    Region, SerialPath, SourceOutput, SpacingAt, StreamRole, Transition,
};
pub use model::{fmu_merge, AuxOutput, MNet, NetOutput};
