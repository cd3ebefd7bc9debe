//! `--arch` values: the full mesh or one extracted serial subnet.

use std::fmt;
use std::str::FromStr;

use mnet_core::graph::{build_grid, extract_subnet, Architecture, MNetConfig, SerialPath};
use mnet_core::tensor::Real;
use mnet_core::graph::MNet;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ArchChoice {
    Mesh,
    /// Move string such as `RRRRDDDD`.
    Subnet(String),
}

impl FromStr for ArchChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mesh" => Ok(ArchChoice::Mesh),
            _ => match s.strip_prefix("subnet:") {
                Some(id) if !id.is_empty() => Ok(ArchChoice::Subnet(id.to_ascii_uppercase())),
                _ => Err(Error::Usage(format!("--arch must be mesh or subnet:<moves>, got {s:?}"))),
            },
        }
    }
}

impl fmt::Display for ArchChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArchChoice::Mesh => f.write_str("mesh"),
            ArchChoice::Subnet(id) => write!(f, "subnet:{id}"),
        }
    }
}

impl ArchChoice {
    pub fn build(&self, config: &MNetConfig) -> Result<Architecture> {
        Ok(match self {
            ArchChoice::Mesh => build_grid(config)?,
            ArchChoice::Subnet(id) => extract_subnet(config, &SerialPath::parse(config.grid_n, id)?)?,
        })
    }

    pub fn model<T: Real>(&self, config: &MNetConfig, seed: u64) -> Result<MNet<T>> {
        Ok(MNet::new(config, self.build(config)?, seed)?)
    }
}
