use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Result};
use serde::{Deserialize, Serialize};
use wavenet::chain::{ChainSpec, FluxSign};
use wavenet::dynamics::{InitialData, SimConfig};
use wavenet::network::{EdgeSpec, VertexSpec};
use wavenet::resolvent::SweepConfig;
use wavenet::spectra::SearchBox;
use wavenet::{CircuitCoupling, GraphSpec, Length, MetricGraph, Variant};

/// One JSON document describing a network, either as a full graph
/// (`variant`, `vertices`, `edges`) or as a chain (`lengths`, `masses`),
/// plus optional per-subcommand sections.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub variant: Option<Variant>,
    #[serde(default)]
    pub vertices: Vec<VertexSpec>,
    #[serde(default)]
    pub edges: Vec<EdgeSpec>,
    #[serde(default)]
    pub circuit_coupling: CircuitCoupling,
    pub lengths: Option<Vec<Length>>,
    pub masses: Option<Vec<f64>>,
    pub simulation: Option<SimConfig>,
    pub initial: Option<InitialData>,
    pub spectrum: Option<SpectrumSection>,
    pub sweep: Option<SweepSection>,
    pub chain: Option<ChainSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    #[serde(rename = "box", default = "default_box")]
    pub search_box: SearchBox,
    #[serde(default = "default_root_tol")]
    pub tol: f64,
    /// Roots with real part above `-axis_tol` count as axis roots.
    #[serde(default = "default_axis_tol")]
    pub axis_tol: f64,
}

fn default_box() -> SearchBox {
    SearchBox::default_for(30.0)
}
fn default_root_tol() -> f64 {
    1e-10
}
fn default_axis_tol() -> f64 {
    1e-8
}

impl Default for SpectrumSection {
    fn default() -> Self {
        SpectrumSection { search_box: default_box(), tol: default_root_tol(), axis_tol: default_axis_tol() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub start: f64,
    #[serde(default = "default_stop")]
    pub stop: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default)]
    pub ladder: SweepConfig,
}

fn default_stop() -> f64 {
    200.0
}
fn default_step() -> f64 {
    0.5
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { start: 0.0, stop: default_stop(), step: default_step(), ladder: SweepConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    #[serde(default = "default_chain_tol")]
    pub tol: f64,
    #[serde(default)]
    pub sign: FluxSign,
}

fn default_chain_tol() -> f64 {
    1e-9
}

impl Default for ChainSection {
    fn default() -> Self {
        ChainSection { tol: default_chain_tol(), sign: FluxSign::default() }
    }
}

/// Reads and parses a config, reporting `path:line:col` on malformed JSON.
pub fn load(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    parse(&text).map_err(|e| anyhow!("{}:{e}", path.display()))
}

pub fn parse(text: &str) -> Result<RunConfig> {
    serde_json::from_str(text).map_err(|e| {
        let msg = e.to_string();
        let msg = msg.rsplit_once(" at line ").map_or(msg.as_str(), |(m, _)| m).to_string();
        anyhow!("{}:{}: {msg}", e.line(), e.column())
    })
}

impl RunConfig {
    pub fn is_chain(&self) -> bool {
        self.lengths.is_some() || self.masses.is_some()
    }

    pub fn chain_spec(&self) -> Result<ChainSpec> {
        let (Some(lengths), Some(masses)) = (&self.lengths, &self.masses) else {
            bail!("a chain config needs both `lengths` and `masses`");
        };
        if self.variant.is_some() || !self.vertices.is_empty() || !self.edges.is_empty() {
            bail!("a config gives either `lengths`/`masses` or `variant`/`vertices`/`edges`, not both");
        }
        Ok(ChainSpec::new(lengths.clone(), masses.clone())?)
    }

    pub fn graph_spec(&self) -> Result<GraphSpec> {
        if self.is_chain() {
            return Ok(self.chain_spec()?.to_graph()?.spec());
        }
        let Some(variant) = self.variant else {
            bail!("config needs `variant`, `vertices` and `edges`, or `lengths` and `masses`");
        };
        Ok(GraphSpec {
            variant,
            vertices: self.vertices.clone(),
            edges: self.edges.clone(),
            circuit_coupling: self.circuit_coupling,
        })
    }

    pub fn graph(&self) -> Result<MetricGraph> {
        if self.is_chain() {
            return Ok(self.chain_spec()?.to_graph()?);
        }
        Ok(self.graph_spec()?.build()?)
    }
}
