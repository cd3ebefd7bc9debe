use std::fmt::Write;

use mnet_core::gradcheck::{model_check, op_suite, CheckReport};
use mnet_core::OpKind;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::format::sig6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub checks: Vec<CheckReport>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckReport::passed)
    }

    pub fn failing(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.passed()).map(|c| c.name.as_str()).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<24} {:>12} {:>10} {:>6}  result", "check", "max_rel_err", "tolerance", "coords");
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{:<24} {:>12} {:>10} {:>6}  {}",
                c.name,
                sig6(c.max_rel_err),
                sig6(c.tolerance),
                c.coordinates,
                if c.passed() { "PASS" } else { "FAIL" }
            );
        }
        let _ = writeln!(s, "{}", if self.passed() { "all checks passed" } else { "gradient check FAILED" });
        s
    }
}

pub fn parse_fault(name: &str) -> Result<OpKind> {
    Ok(match name {
        "conv3d" => OpKind::Conv3d,
        "maxpool3d" => OpKind::MaxPool3d,
        "upsample" => OpKind::Upsample,
        "instance_norm" => OpKind::InstanceNorm,
        "leaky_relu" => OpKind::LeakyRelu,
        "add" => OpKind::Add,
        "sub" => OpKind::Sub,
        "abs" => OpKind::Abs,
        "scale" => OpKind::Scale,
        "sum" => OpKind::Sum,
        "concat" => OpKind::Concat,
        "slice_channels" => OpKind::SliceChannels,
        "softmax" => OpKind::Softmax,
        "hybrid_loss" => OpKind::HybridLoss,
        other => return Err(Error::Config(format!("unknown op {other:?} for gradcheck.fault"))),
    })
}

/// Runs the op-level suite (and the whole-model check when
/// `gradcheck.model_samples > 0`) in 64-bit mode. The report is returned
/// even when checks fail; callers map failure to exit code 2.
pub fn cmd_gradcheck(config: &RunConfig) -> Result<GradcheckReport> {
    let fault = config.gradcheck.fault.as_deref().map(parse_fault).transpose()?;
    let mut checks = op_suite(fault)?;
    if config.gradcheck.model_samples > 0 {
        checks.push(model_check(config.gradcheck.model_samples, fault, config.train.seed)?);
    }
    Ok(GradcheckReport { checks })
}
