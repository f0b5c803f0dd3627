//! Scenario configuration: a single TOML file with nested sections, parsed
//! into typed blocks and validated against the structural assumptions before
//! any solver object can be built. All quantities are SI (pressures Pa,
//! rates 1/s, lengths m); viscosity is absorbed into the mobilities.

use crate::block::BlockGrid;
use crate::error::{Error, Result};
use crate::homogenize::{build_geometry, CellGeometry, CellShape, CellTensor};
use crate::macroscale::{MacroOptions, Regime};
use crate::petro::{CurvePair, CurveParams, MediumCurves, MediumId};
use serde::Deserialize;
use std::path::Path;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumSection {
    #[serde(default = "default_exp")]
    pub exp_w: f64,
    #[serde(default = "default_exp")]
    pub exp_n: f64,
    #[serde(default = "default_mu")]
    pub mu_w: f64,
    #[serde(default = "default_mu")]
    pub mu_n: f64,
    #[serde(default = "default_entry")]
    pub entry_pressure: f64,
    #[serde(default)]
    pub shape_c: f64,
}

fn default_exp() -> f64 {
    2.0
}
fn default_mu() -> f64 {
    1.0
}
fn default_entry() -> f64 {
    1.0
}

impl Default for MediumSection {
    fn default() -> Self {
        MediumSection {
            exp_w: 2.0,
            exp_n: 2.0,
            mu_w: 1.0,
            mu_n: 1.0,
            entry_pressure: 1.0,
            shape_c: 0.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSection {
    #[serde(default = "default_shape")]
    pub shape: String,
    #[serde(default = "default_extent")]
    pub extent: f64,
    #[serde(default = "default_cell_n")]
    pub n: usize,
    #[serde(default)]
    pub mask_file: String,
    #[serde(default = "default_phi_f")]
    pub porosity_fracture: f64,
    #[serde(default = "default_phi_m")]
    pub porosity_matrix: f64,
    /// linear-in-y1 porosity slope for heterogeneous matrix tests
    #[serde(default)]
    pub porosity_matrix_slope: f64,
    #[serde(default = "default_perm")]
    pub permeability: f64,
}

fn default_shape() -> String {
    "horizontal-slab".to_string()
}
fn default_extent() -> f64 {
    0.5
}
fn default_cell_n() -> usize {
    64
}
fn default_phi_f() -> f64 {
    0.2
}
fn default_phi_m() -> f64 {
    0.3
}
fn default_perm() -> f64 {
    1.0
}

impl Default for CellSection {
    fn default() -> Self {
        CellSection {
            shape: default_shape(),
            extent: default_extent(),
            n: default_cell_n(),
            mask_file: String::new(),
            porosity_fracture: default_phi_f(),
            porosity_matrix: default_phi_m(),
            porosity_matrix_slope: 0.0,
            permeability: default_perm(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeSection {
    #[serde(default = "default_theta")]
    pub theta: f64,
}

fn default_theta() -> f64 {
    2.0
}

impl Default for RegimeSection {
    fn default() -> Self {
        RegimeSection {
            theta: default_theta(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MacroGridSection {
    #[serde(default = "default_nx")]
    pub nx: usize,
    #[serde(default = "default_lx")]
    pub lx: f64,
}

fn default_nx() -> usize {
    64
}
fn default_lx() -> f64 {
    1.0
}

impl Default for MacroGridSection {
    fn default() -> Self {
        MacroGridSection {
            nx: default_nx(),
            lx: default_lx(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_dt_init")]
    pub dt_init: f64,
    #[serde(default = "default_dt_max")]
    pub dt_max: f64,
    #[serde(default)]
    pub snapshot_every: usize,
}

fn default_t_end() -> f64 {
    0.2
}
fn default_dt_init() -> f64 {
    1e-3
}
fn default_dt_max() -> f64 {
    5e-3
}

impl Default for TimeSection {
    fn default() -> Self {
        TimeSection {
            t_end: default_t_end(),
            dt_init: default_dt_init(),
            dt_max: default_dt_max(),
            snapshot_every: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourcesSection {
    #[serde(default)]
    pub injection_rate: f64,
    #[serde(default)]
    pub inject_from: f64,
    #[serde(default = "default_inject_to")]
    pub inject_to: f64,
    #[serde(default)]
    pub production_rate: f64,
    #[serde(default = "default_produce_from")]
    pub produce_from: f64,
    #[serde(default = "default_one")]
    pub produce_to: f64,
    #[serde(default = "default_one")]
    pub injection_saturation_w: f64,
}

fn default_inject_to() -> f64 {
    0.1
}
fn default_produce_from() -> f64 {
    0.9
}
fn default_one() -> f64 {
    1.0
}

impl Default for SourcesSection {
    fn default() -> Self {
        SourcesSection {
            injection_rate: 0.0,
            inject_from: 0.0,
            inject_to: default_inject_to(),
            production_rate: 0.0,
            produce_from: default_produce_from(),
            produce_to: 1.0,
            injection_saturation_w: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySection {
    #[serde(default)]
    pub p_gamma1: f64,
    #[serde(default = "default_one")]
    pub s_gamma1: f64,
    #[serde(default)]
    pub gravity_x: f64,
}

impl Default for BoundarySection {
    fn default() -> Self {
        BoundarySection {
            p_gamma1: 0.0,
            s_gamma1: 1.0,
            gravity_x: 0.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    #[serde(default = "default_s0")]
    pub saturation: f64,
    /// negative value selects the capillary-equilibrium default
    #[serde(default = "default_neg")]
    pub matrix_saturation: f64,
}

fn default_s0() -> f64 {
    0.3
}
fn default_neg() -> f64 {
    -1.0
}

impl Default for InitialSection {
    fn default() -> Self {
        InitialSection {
            saturation: default_s0(),
            matrix_saturation: default_neg(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSection {
    #[serde(default = "default_block_cells")]
    pub cells: usize,
    #[serde(default = "default_subcycle")]
    pub subcycle: usize,
}

fn default_block_cells() -> usize {
    32
}
fn default_subcycle() -> usize {
    1
}

impl Default for BlockSection {
    fn default() -> Self {
        BlockSection {
            cells: default_block_cells(),
            subcycle: default_subcycle(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockDemoSection {
    #[serde(default = "default_demo_times")]
    pub boundary_times: Vec<f64>,
    #[serde(default = "default_demo_values")]
    pub boundary_values: Vec<f64>,
    #[serde(default = "default_demo_t_end")]
    pub t_end: f64,
    #[serde(default = "default_demo_dt")]
    pub dt: f64,
    #[serde(default)]
    pub snapshot_every: usize,
}

fn default_demo_times() -> Vec<f64> {
    vec![0.0, 0.05]
}
fn default_demo_values() -> Vec<f64> {
    vec![0.2, 0.9]
}
fn default_demo_t_end() -> f64 {
    0.3
}
fn default_demo_dt() -> f64 {
    2e-3
}

impl Default for BlockDemoSection {
    fn default() -> Self {
        BlockDemoSection {
            boundary_times: default_demo_times(),
            boundary_values: default_demo_values(),
            t_end: default_demo_t_end(),
            dt: default_demo_dt(),
            snapshot_every: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicroSection {
    #[serde(default = "default_rpc")]
    pub resolution_per_cell: usize,
    #[serde(default = "default_eps")]
    pub epsilon: f64,
    #[serde(default = "default_layout")]
    pub layout: String,
}

fn default_rpc() -> usize {
    16
}
fn default_eps() -> f64 {
    0.125
}
fn default_layout() -> String {
    "strip".to_string()
}

impl Default for MicroSection {
    fn default() -> Self {
        MicroSection {
            resolution_per_cell: default_rpc(),
            epsilon: default_eps(),
            layout: default_layout(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_outdir")]
    pub directory: String,
}

fn default_outdir() -> String {
    "out".to_string()
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: default_outdir(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub fracture: MediumSection,
    #[serde(default = "default_matrix_section")]
    pub matrix: MediumSection,
    #[serde(default)]
    pub cell: CellSection,
    #[serde(default)]
    pub regime: RegimeSection,
    #[serde(default)]
    pub macro_grid: MacroGridSection,
    #[serde(default)]
    pub time: TimeSection,
    #[serde(default)]
    pub sources: SourcesSection,
    #[serde(default)]
    pub boundary: BoundarySection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub block: BlockSection,
    #[serde(default)]
    pub block_demo: BlockDemoSection,
    #[serde(default)]
    pub micro: MicroSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_matrix_section() -> MediumSection {
    MediumSection {
        shape_c: 0.5,
        ..MediumSection::default()
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            fracture: MediumSection::default(),
            matrix: default_matrix_section(),
            cell: CellSection::default(),
            regime: RegimeSection::default(),
            macro_grid: MacroGridSection::default(),
            time: TimeSection::default(),
            sources: SourcesSection::default(),
            boundary: BoundarySection::default(),
            initial: InitialSection::default(),
            block: BlockSection::default(),
            block_demo: BlockDemoSection::default(),
            micro: MicroSection::default(),
            output: OutputSection::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("parse error: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_str(&text)
    }

    fn medium_params(&self, id: MediumId) -> CurveParams {
        let s = match id {
            MediumId::Fracture => &self.fracture,
            MediumId::Matrix => &self.matrix,
        };
        CurveParams {
            medium: id,
            exp_w: s.exp_w,
            exp_n: s.exp_n,
            mu_w: s.mu_w,
            mu_n: s.mu_n,
            entry_pressure: s.entry_pressure,
            shape_c: s.shape_c,
        }
    }

    /// Validates every assumption expressible on the raw configuration.
    /// Returns the list of violations, each tagged with the assumption label.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        v.extend(self.medium_params(MediumId::Fracture).validate());
        v.extend(self.medium_params(MediumId::Matrix).validate());
        let (ef, em) = (self.fracture.entry_pressure, self.matrix.entry_pressure);
        if (ef - em).abs() > 1e-12 * ef.abs().max(em.abs()).max(1.0) {
            v.push(format!(
                "A.3: capillary entry pressures must match: pc_f(0) = {ef}, pc_m(0) = {em}"
            ));
        }
        if !(self.cell.porosity_fracture > 0.0 && self.cell.porosity_fracture < 1.0) {
            v.push(format!(
                "A.1: fracture porosity {} outside (0,1)",
                self.cell.porosity_fracture
            ));
        }
        if !(self.cell.porosity_matrix > 0.0 && self.cell.porosity_matrix < 1.0) {
            v.push(format!(
                "A.1: matrix porosity {} outside (0,1)",
                self.cell.porosity_matrix
            ));
        }
        if !(self.cell.permeability > 0.0) {
            v.push(format!(
                "A.2: permeability {} must be positive",
                self.cell.permeability
            ));
        }
        if !(self.regime.theta > 0.0) {
            v.push(format!(
                "A.2: contrast exponent theta {} must be positive",
                self.regime.theta
            ));
        }
        if self.sources.injection_rate < 0.0 || self.sources.production_rate < 0.0 {
            v.push("A.9: injection and production rates must be nonnegative".to_string());
        }
        if !(0.0..=1.0).contains(&self.sources.injection_saturation_w) {
            v.push(format!(
                "A.9: injection saturation {} outside [0,1]",
                self.sources.injection_saturation_w
            ));
        }
        if !(0.0..=1.0).contains(&self.initial.saturation) {
            v.push(format!(
                "A.8: initial saturation {} outside [0,1]",
                self.initial.saturation
            ));
        }
        if self.initial.matrix_saturation > 1.0 {
            v.push(format!(
                "A.8: initial matrix saturation {} outside [0,1]",
                self.initial.matrix_saturation
            ));
        }
        if !(0.0..=1.0).contains(&self.boundary.s_gamma1) {
            v.push(format!(
                "A.8: boundary saturation {} outside [0,1]",
                self.boundary.s_gamma1
            ));
        }
        if !(self.time.t_end >= 0.0 && self.time.dt_init > 0.0 && self.time.dt_max > 0.0) {
            v.push("time block: t_end must be nonnegative, steps positive".to_string());
        }
        if self.macro_grid.nx < 2 || !(self.macro_grid.lx > 0.0) {
            v.push("macro grid: nx >= 2 and lx > 0 required".to_string());
        }
        if self.block.cells < 2 {
            v.push("block: at least 2 cells required".to_string());
        }
        if self.block.subcycle == 0 {
            v.push("block: subcycle factor must be at least 1".to_string());
        }
        if self.block_demo.boundary_times.len() != self.block_demo.boundary_values.len()
            || self.block_demo.boundary_times.is_empty()
        {
            v.push(
                "block_demo: boundary_times and boundary_values must have equal nonzero length"
                    .to_string(),
            );
        }
        if self
            .block_demo
            .boundary_values
            .iter()
            .any(|s| !(0.0..=1.0).contains(s))
        {
            v.push("block_demo: boundary values outside [0,1]".to_string());
        }
        if self.micro.resolution_per_cell < 8 {
            v.push("micro: resolution_per_cell must be at least 8".to_string());
        }
        match self.micro.layout.as_str() {
            "strip" | "replicated" => {}
            other => v.push(format!("micro: unknown layout '{other}'")),
        }
        v
    }

    pub fn build_pair(&self) -> Result<CurvePair> {
        let violations = self.validate();
        if !violations.is_empty() {
            return Err(Error::config(violations.join("; ")));
        }
        CurvePair::new(
            MediumCurves::new(self.medium_params(MediumId::Fracture))?,
            MediumCurves::new(self.medium_params(MediumId::Matrix))?,
        )
    }

    pub fn cell_shape(&self) -> Result<CellShape> {
        match self.cell.shape.as_str() {
            "centered-box" => Ok(CellShape::CenteredBox {
                side: self.cell.extent,
            }),
            "horizontal-slab" => Ok(CellShape::HorizontalSlab {
                thickness: self.cell.extent,
            }),
            "custom" => {
                let text = std::fs::read_to_string(&self.cell.mask_file).map_err(|e| {
                    Error::config(format!(
                        "cannot read mask file {}: {e}",
                        self.cell.mask_file
                    ))
                })?;
                let mask = parse_mask(&text)?;
                Ok(CellShape::Custom { mask })
            }
            other => Err(Error::config(format!("unknown cell shape '{other}'"))),
        }
    }

    pub fn build_cell_geometry(&self) -> Result<CellGeometry> {
        let shape = self.cell_shape()?;
        let phi0 = self.cell.porosity_matrix;
        let slope = self.cell.porosity_matrix_slope;
        let k = self.cell.permeability;
        build_geometry(
            &shape,
            2,
            self.cell.n,
            move |x, _| phi0 + slope * (x - 0.5),
            move |_, _| CellTensor::isotropic(k),
        )
    }

    pub fn regime(&self) -> Result<Regime> {
        Regime::from_theta(self.regime.theta)
    }

    pub fn macro_options(&self, workers: usize) -> MacroOptions {
        MacroOptions {
            t_end: self.time.t_end,
            dt_init: self.time.dt_init,
            dt_max: self.time.dt_max,
            max_dt_halvings: 10,
            workers,
            snapshot_every: self.time.snapshot_every,
            block_subcycle: self.block.subcycle,
        }
    }

    pub fn build_block_grid(&self) -> Result<BlockGrid> {
        BlockGrid::line(
            self.cell.extent,
            self.block.cells,
            self.cell.porosity_matrix,
            self.cell.permeability,
        )
    }

    /// Per-cell source fields on the macro grid (rates over domain fractions).
    pub fn source_fields(&self) -> (Vec<f64>, Vec<f64>) {
        let nx = self.macro_grid.nx;
        let mut f_i = vec![0.0; nx];
        let mut f_p = vec![0.0; nx];
        for i in 0..nx {
            let x = (i as f64 + 0.5) / nx as f64;
            if x >= self.sources.inject_from && x <= self.sources.inject_to {
                f_i[i] = self.sources.injection_rate;
            }
            if x >= self.sources.produce_from && x <= self.sources.produce_to {
                f_p[i] = self.sources.production_rate;
            }
        }
        (f_i, f_p)
    }
}

fn parse_mask(text: &str) -> Result<Vec<Vec<bool>>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut row = Vec::new();
        for ch in line.chars() {
            match ch {
                '0' => row.push(false),
                '1' => row.push(true),
                ' ' | '\t' | ',' => {}
                other => {
                    return Err(Error::config(format!(
                        "mask line {}: unexpected character '{other}'",
                        lineno + 1
                    )))
                }
            }
        }
        if !row.is_empty() {
            rows.push(row);
        }
    }
    if rows.is_empty() {
        return Err(Error::config("mask file has no rows".to_string()));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates_cleanly() {
        let cfg = ScenarioConfig::default();
        assert!(cfg.validate().is_empty(), "{:?}", cfg.validate());
        assert!(cfg.build_pair().is_ok());
        assert!(cfg.build_cell_geometry().is_ok());
    }

    #[test]
    fn violations_carry_assumption_labels() {
        let mut cfg = ScenarioConfig::default();
        cfg.cell.porosity_matrix = 1.2;
        let v = cfg.validate();
        assert!(v.iter().any(|m| m.starts_with("A.1")), "{v:?}");
        let mut cfg2 = ScenarioConfig::default();
        cfg2.matrix.entry_pressure = 2.0;
        let v2 = cfg2.validate();
        assert!(v2.iter().any(|m| m.starts_with("A.3")), "{v2:?}");
        let mut cfg3 = ScenarioConfig::default();
        cfg3.sources.injection_rate = -1.0;
        assert!(cfg3.validate().iter().any(|m| m.starts_with("A.9")));
        let mut cfg4 = ScenarioConfig::default();
        cfg4.regime.theta = 0.0;
        assert!(cfg4.validate().iter().any(|m| m.starts_with("A.2")));
    }

    #[test]
    fn toml_round_trip_and_unknown_keys() {
        let cfg = ScenarioConfig::from_str(
            r#"
            [regime]
            theta = 1.0
            [cell]
            shape = "centered-box"
            extent = 0.5
            n = 32
            "#,
        )
        .unwrap();
        assert_eq!(cfg.regime.theta, 1.0);
        assert_eq!(cfg.cell.n, 32);
        let err = ScenarioConfig::from_str("[regime]\nunknown_key = 3\n");
        assert!(err.is_err());
    }

    #[test]
    fn mask_parsing() {
        let mask = parse_mask("0 1 0\n1 1 1\n0 1 0\n").unwrap();
        assert_eq!(mask.len(), 3);
        assert_eq!(mask[0], vec![false, true, false]);
        assert!(parse_mask("abc").is_err());
        assert!(parse_mask("").is_err());
    }

    #[test]
    fn source_fields_cover_the_requested_ranges() {
        let mut cfg = ScenarioConfig::default();
        cfg.sources.injection_rate = 2.0;
        cfg.sources.production_rate = 1.0;
        cfg.macro_grid.nx = 10;
        let (fi, fp) = cfg.source_fields();
        assert_eq!(fi[0], 2.0);
        assert_eq!(fi[3], 0.0);
        assert_eq!(fp[9], 1.0);
        assert_eq!(fp[0], 0.0);
    }
}
