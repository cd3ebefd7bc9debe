use std::fmt::Write;

use mnet_core::graph::{enumerate_serial_subnets, MNet};
use serde::Serialize;

use crate::config::{ReportFormat, RunConfig};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeReport {
    pub row: usize,
    pub col: usize,
    pub kind: String,
    pub a: usize,
    pub b: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub params: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArchReport {
    pub arch: String,
    pub grid_n: usize,
    pub nodes: Vec<NodeReport>,
    /// `(TwoD, ThreeD, Both)` node counts.
    pub kind_histogram: [usize; 3],
    pub total_params: usize,
    /// Serial subnets contained in the full mesh of this grid.
    pub subnet_count: usize,
}

impl ArchReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "architecture {} (grid {}x{})", self.arch, self.grid_n, self.grid_n);
        let _ = writeln!(s, "{:<8} {:<6} {:>3} {:>3} {:>6} {:>6} {:>10}", "node", "kind", "a", "b", "c_in", "c_out", "params");
        for n in &self.nodes {
            let _ = writeln!(
                s,
                "{:<8} {:<6} {:>3} {:>3} {:>6} {:>6} {:>10}",
                format!("({},{})", n.row, n.col),
                n.kind,
                n.a,
                n.b,
                n.in_channels,
                n.out_channels,
                n.params
            );
        }
        let [t, d, b] = self.kind_histogram;
        let _ = writeln!(s, "nodes {}  kinds 2d/3d/both {t}/{d}/{b}", self.nodes.len());
        let _ = writeln!(s, "total parameters {}", self.total_params);
        let _ = writeln!(s, "serial subnets {}", self.subnet_count);
        s
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Text => self.to_text(),
            ReportFormat::Json => serde_json::to_string_pretty(self).expect("report serializes") + "\n",
        }
    }
}

/// Describes the configured architecture without running it.
pub fn cmd_inspect_arch(config: &RunConfig) -> Result<ArchReport> {
    config.model.validate()?;
    let choice = config.arch_choice()?;
    let model: MNet<f32> = choice.model(&config.model, 0)?;
    let arch = model.architecture();
    let nodes = arch
        .nodes
        .iter()
        .map(|n| NodeReport {
            row: n.pos.row,
            col: n.pos.col,
            kind: n.kind.label().into(),
            a: n.a,
            b: n.b,
            in_channels: n.in_channels,
            out_channels: n.out_channels,
            params: model.node_param_count(n.pos),
        })
        .collect();
    let (t, d, b) = arch.kind_histogram();
    Ok(ArchReport {
        arch: choice.to_string(),
        grid_n: arch.grid_n,
        nodes,
        kind_histogram: [t, d, b],
        total_params: model.param_count(),
        subnet_count: enumerate_serial_subnets(&config.model).len(),
    })
}
