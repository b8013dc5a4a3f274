//! Config document parsing and conversion into core model types.
//!
//! A config describes either a raw reset system (A, C, n_r) or a structured
//! feedback loop (plant, compensator, exosystems). Exactly one of the two
//! forms must be present.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use resetsim_core::model::{
    assemble_closed_loop, build_reset_system, ClosedLoop, Compensator, Exosystem, LinearSiso,
    Plant, ResetSystem,
};
use resetsim_core::numerics::DEFAULT_RANK_TOL;
use resetsim_core::simulate::SimOptions;
use resetsim_core::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<RawConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structured: Option<StructuredConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numeric_options: Option<NumericOptions>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub a: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub n_r: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructuredConfig {
    pub plant: PlantConfig,
    pub compensator: CompensatorConfig,
    #[serde(default)]
    pub exosystems: ExosystemsConfig,
    /// Full closed-loop initial state (w1, w2, xp, xr), noise excluded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompensatorConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_r: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_r: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_r: Option<Vec<f64>>,
    #[serde(default)]
    pub d_r: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_rho: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series: Option<SeriesConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesConfig {
    /// "linear-then-reset" or "reset-then-linear".
    pub order: String,
    pub linear: BlockConfig,
    pub reset_base: BlockConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockConfig {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExosystemsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ExoConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disturbance: Option<ExoConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<ExoConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExoConfig {
    pub a_w: Vec<Vec<f64>>,
    pub c_w: Vec<f64>,
    pub w0: Vec<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericOptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_events: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deriv_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_sample_dt: Option<f64>,
}

/// A parsed config instantiated into core model objects.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub name: String,
    pub system: ResetSystem,
    pub closed_loop: Option<ClosedLoop>,
    pub noise: Option<Exosystem>,
    pub initial_state: Option<DVector<f64>>,
    pub options: SimOptions,
    pub hash: u64,
}

fn matrix(rows: &[Vec<f64>], what: &'static str) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(Error::Precondition(format!("{what}: empty matrix")));
    }
    let ncols = rows[0].len();
    if ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Precondition(format!("{what}: ragged or empty rows")));
    }
    Ok(DMatrix::from_row_iterator(
        rows.len(),
        ncols,
        rows.iter().flat_map(|r| r.iter().copied()),
    ))
}

fn column(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v)
}

fn row(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, v.len(), v)
}

fn vector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// Rank tolerance, honoring the RESETSIM_TOL override.
pub fn rank_tol() -> f64 {
    match std::env::var("RESETSIM_TOL") {
        Ok(s) => s.trim().parse::<f64>().ok().filter(|t| *t > 0.0 && t.is_finite()),
        Err(_) => None,
    }
    .unwrap_or(DEFAULT_RANK_TOL)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl SystemConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::Precondition(format!("config parse error: {e}")))
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Precondition(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Deterministic content hash of the parsed document.
    pub fn hash(&self) -> u64 {
        let canonical = serde_json::to_string(self).expect("config serialization");
        fnv1a(canonical.as_bytes())
    }

    pub fn sim_options(&self) -> SimOptions {
        let mut o = SimOptions::default();
        if let Some(n) = &self.numeric_options {
            if let Some(v) = n.t_max {
                o.t_max = v;
            }
            if let Some(v) = n.max_events {
                o.max_events = v;
            }
            if let Some(v) = n.value_tol {
                o.value_tol = v;
            }
            if let Some(v) = n.time_tol {
                o.time_tol = v;
            }
            if let Some(v) = n.deriv_tol {
                o.deriv_tol = v;
            }
            if let Some(v) = n.sample_step {
                o.sample_step = Some(v);
            }
            if let Some(v) = n.output_sample_dt {
                o.output_sample_dt = v;
            }
        }
        o
    }

    /// Instantiates core model objects, using `tol` as the rank tolerance.
    pub fn load(&self, tol: f64) -> Result<Loaded> {
        match (&self.raw, &self.structured) {
            (Some(_), Some(_)) | (None, None) => Err(Error::Precondition(
                "config must contain exactly one of `raw` or `structured`".into(),
            )),
            (Some(raw), None) => {
                let a = matrix(&raw.a, "raw.a")?;
                let c = row(&raw.c);
                let system = build_reset_system(a, c, raw.n_r, tol)?;
                let initial_state = match &raw.initial_state {
                    Some(v) if v.len() != system.dim() => {
                        return Err(Error::Precondition(format!(
                            "raw.initial_state has length {}, state dimension is {}",
                            v.len(),
                            system.dim()
                        )))
                    }
                    Some(v) => Some(vector(v)),
                    None => None,
                };
                Ok(Loaded {
                    name: self.name.clone().unwrap_or_else(|| "unnamed".into()),
                    system,
                    closed_loop: None,
                    noise: None,
                    initial_state,
                    options: self.sim_options(),
                    hash: self.hash(),
                })
            }
            (None, Some(s)) => {
                let plant = Plant::new(
                    matrix(&s.plant.a, "plant.a")?,
                    column(&s.plant.b),
                    row(&s.plant.c),
                )?;
                let comp = build_compensator(&s.compensator)?;
                let reference = s.exosystems.reference.as_ref().map(build_exo).transpose()?;
                let disturbance = s.exosystems.disturbance.as_ref().map(build_exo).transpose()?;
                let noise = s.exosystems.noise.as_ref().map(build_exo).transpose()?;
                let cl = assemble_closed_loop(plant, comp, reference, disturbance, tol)?;
                let initial_state = match &s.initial_state {
                    Some(v) if v.len() != cl.system.dim() => {
                        return Err(Error::Precondition(format!(
                            "structured.initial_state has length {}, closed-loop dimension is {}",
                            v.len(),
                            cl.system.dim()
                        )))
                    }
                    Some(v) => Some(vector(v)),
                    None => None,
                };
                Ok(Loaded {
                    name: self.name.clone().unwrap_or_else(|| "unnamed".into()),
                    system: cl.system.clone(),
                    closed_loop: Some(cl),
                    noise,
                    initial_state,
                    options: self.sim_options(),
                    hash: self.hash(),
                })
            }
        }
    }
}

fn build_block(b: &BlockConfig, what: &'static str) -> Result<LinearSiso> {
    LinearSiso::new(matrix(&b.a, what)?, column(&b.b), row(&b.c))
}

fn build_compensator(c: &CompensatorConfig) -> Result<Compensator> {
    let direct = c.a_r.is_some() || c.b_r.is_some() || c.c_r.is_some() || c.n_rho.is_some();
    match (&c.series, direct) {
        (Some(_), true) => Err(Error::Precondition(
            "compensator: give either direct matrices or a series form, not both".into(),
        )),
        (None, false) => Err(Error::Precondition(
            "compensator: missing matrices (a_r, b_r, c_r, n_rho) or a series form".into(),
        )),
        (Some(series), false) => {
            let linear = build_block(&series.linear, "compensator.series.linear")?;
            let reset_base = build_block(&series.reset_base, "compensator.series.reset_base")?;
            let mut comp = match series.order.as_str() {
                "linear-then-reset" => Compensator::left_series(linear, reset_base)?,
                "reset-then-linear" => Compensator::right_series(reset_base, linear)?,
                other => {
                    return Err(Error::Precondition(format!(
                        "compensator.series.order must be \"linear-then-reset\" or \
                         \"reset-then-linear\", got \"{other}\""
                    )))
                }
            };
            comp.d_r = c.d_r;
            Ok(comp)
        }
        (None, true) => {
            let (a_r, b_r, c_r, n_rho) = match (&c.a_r, &c.b_r, &c.c_r, c.n_rho) {
                (Some(a), Some(b), Some(cc), Some(n)) => (a, b, cc, n),
                _ => {
                    return Err(Error::Precondition(
                        "compensator: a_r, b_r, c_r, and n_rho are all required".into(),
                    ))
                }
            };
            Compensator::new(
                matrix(a_r, "compensator.a_r")?,
                column(b_r),
                row(c_r),
                c.d_r,
                n_rho,
            )
        }
    }
}

fn build_exo(e: &ExoConfig) -> Result<Exosystem> {
    Exosystem::new(matrix(&e.a_w, "exosystem.a_w")?, row(&e.c_w), vector(&e.w0))
}
