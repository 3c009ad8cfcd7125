//! Predictive policing on a synthetic grid city.
//!
//! A smoothed count predictor ranks cells by estimated crime intensity, the
//! top `N` cells become hotspots, and incidents near hotspots are discovered
//! more often than elsewhere. The predictor only ever learns from discovered
//! incidents.

use rand_distr::{Binomial, Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigSpace, Configuration, ParamKind, ParamValue, ParameterDef};
use crate::metrics::{avg_pairwise_rpd, MetricError};
use crate::rng::RngStream;
use crate::sim::{simulate_trace, EnvironmentModel, GroupStats, Scenario, SimError, Snapshot, SystemAgent, Trace};

pub const CASE_ID: &str = "policing";
pub const PARAMETER_NAMES: [&str; 3] = ["discovery_rate_hot", "discovery_rate_other", "effect_range"];
pub const DECAY: f64 = 0.8;
pub const DISTRICTS: usize = 4;
/// The district whose base rates are scaled up.
pub const HIGH_CRIME_DISTRICT: usize = 0;
pub const HIGH_CRIME_FACTOR: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicingParams {
    pub hotspot_count: usize,
    pub discovery_rate_hot: f64,
    pub discovery_rate_other: f64,
    pub effect_range: u32,
}

impl PolicingParams {
    pub fn decode(space: &ConfigSpace, config: &Configuration, hotspot_count: usize) -> Result<Self, SimError> {
        let num = |name: &str| {
            space
                .value(config, name)
                .and_then(|v| v.as_f64())
                .ok_or_else(|| SimError::InvalidConfig(format!("missing numeric parameter `{name}`")))
        };
        let r = num("effect_range")?;
        Ok(Self {
            hotspot_count,
            discovery_rate_hot: num("discovery_rate_hot")?,
            discovery_rate_other: num("discovery_rate_other")?,
            effect_range: r as u32,
        })
    }
}

/// The full policing space: 5 × 7 × 3 = 105 configurations.
pub fn default_space() -> ConfigSpace {
    ConfigSpace::new(vec![
        ParameterDef::numeric(
            "discovery_rate_hot",
            ParamKind::Environmental,
            &[0.8, 0.85, 0.9, 0.95, 1.0],
        ),
        ParameterDef::numeric(
            "discovery_rate_other",
            ParamKind::Environmental,
            &[0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5],
        ),
        ParameterDef::numeric("effect_range", ParamKind::System, &[1.0, 2.0, 3.0]),
    ])
    .expect("static space is valid")
}

pub fn validate_value(name: &str, value: &ParamValue) -> Result<(), String> {
    match (name, value) {
        ("discovery_rate_hot" | "discovery_rate_other", ParamValue::Numeric(p)) => {
            if (0.0..=1.0).contains(p) {
                Ok(())
            } else {
                Err("out of range: must be in [0, 1]".into())
            }
        }
        ("effect_range", ParamValue::Numeric(r)) => {
            if *r >= 1.0 && r.fract() == 0.0 && *r <= 1000.0 {
                Ok(())
            } else {
                Err("out of range: must be a positive integer".into())
            }
        }
        (n, ParamValue::Categorical(_)) if PARAMETER_NAMES.contains(&n) => Err("expected a number".into()),
        _ => Err(format!("unknown policing parameter `{name}`")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicingScale {
    pub grid_size: usize,
    pub hotspot_count: usize,
}

impl Default for PolicingScale {
    fn default() -> Self {
        Self {
            grid_size: 20,
            hotspot_count: 50,
        }
    }
}

impl PolicingScale {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.grid_size < 2 || !self.grid_size.is_multiple_of(2) {
            return Err(SimError::InvalidConfig("grid_size must be even and at least 2".into()));
        }
        if self.hotspot_count == 0 || self.hotspot_count > self.grid_size * self.grid_size {
            return Err(SimError::InvalidConfig("hotspot_count must be in 1..=grid_size²".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridEnvState {
    pub size: usize,
    pub lambda_true: Vec<f64>,
    pub lambda_hat: Vec<f64>,
    /// True incidents of the last step.
    pub incidents: Vec<u64>,
    /// Discovered incidents of the last step.
    pub discovered: Vec<u64>,
    pub step: usize,
}

impl GridEnvState {
    pub fn cells(&self) -> usize {
        self.size * self.size
    }
}

/// Quadrant of a cell, numbered row-major: 0 top-left, 3 bottom-right.
#[inline]
pub fn district_of(cell: usize, size: usize) -> usize {
    let (row, col) = (cell / size, cell % size);
    2 * usize::from(row >= size / 2) + usize::from(col >= size / 2)
}

pub fn police_init(size: usize, rng: &mut RngStream) -> GridEnvState {
    let gamma = Gamma::new(2.0, 0.5).expect("valid gamma");
    let noise = Normal::new(0.0, 0.1).expect("valid normal");
    let cells = size * size;
    let lambda_true: Vec<f64> = (0..cells)
        .map(|c| {
            let l = gamma.sample(rng);
            if district_of(c, size) == HIGH_CRIME_DISTRICT {
                l * HIGH_CRIME_FACTOR
            } else {
                l
            }
        })
        .collect();
    let lambda_hat = lambda_true
        .iter()
        .map(|l| (l + noise.sample(rng)).max(0.0))
        .collect();
    GridEnvState {
        size,
        lambda_true,
        lambda_hat,
        incidents: vec![0; cells],
        discovered: vec![0; cells],
        step: 0,
    }
}

/// The `n` cells with the highest estimate, ties to the lower index.
/// Returned in ascending cell order.
pub fn allocate_hotspots(lambda_hat: &[f64], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..lambda_hat.len()).collect();
    let n = n.min(order.len());
    let cmp = |a: &usize, b: &usize| lambda_hat[*b].total_cmp(&lambda_hat[*a]).then(a.cmp(b));
    if n < order.len() {
        order.select_nth_unstable_by(n, cmp);
    }
    order.truncate(n);
    order.sort_unstable();
    order
}

/// Cells within Chebyshev distance `r − 1` of a hotspot.
pub fn effect_area(hotspots: &[usize], size: usize, effect_range: u32) -> Vec<bool> {
    let reach = effect_range.saturating_sub(1) as usize;
    let mut area = vec![false; size * size];
    for &h in hotspots {
        let (row, col) = (h / size, h % size);
        for r in row.saturating_sub(reach)..=(row + reach).min(size - 1) {
            for c in col.saturating_sub(reach)..=(col + reach).min(size - 1) {
                area[r * size + c] = true;
            }
        }
    }
    area
}

/// Draws this step's incidents and thins them by the local discovery rate.
/// Returns `(true incidents, discovered)` per cell.
pub fn discover_incidents(
    lambda_true: &[f64],
    area: &[bool],
    params: &PolicingParams,
    rng: &mut RngStream,
) -> (Vec<u64>, Vec<u64>) {
    let mut incidents = Vec::with_capacity(lambda_true.len());
    let mut discovered = Vec::with_capacity(lambda_true.len());
    for (&l, &inside) in lambda_true.iter().zip(area) {
        let n = if l > 0.0 {
            Poisson::new(l).expect("positive rate").sample(rng) as u64
        } else {
            0
        };
        let p = if inside {
            params.discovery_rate_hot
        } else {
            params.discovery_rate_other
        };
        let d = if n == 0 || p <= 0.0 {
            0
        } else if p >= 1.0 {
            n
        } else {
            Binomial::new(n, p).expect("valid binomial").sample(rng)
        };
        incidents.push(n);
        discovered.push(d);
    }
    (incidents, discovered)
}

/// Exponential smoothing of discovered counts.
pub fn update_prediction(lambda_hat: &[f64], discovered: &[u64]) -> Vec<f64> {
    lambda_hat
        .iter()
        .zip(discovered)
        .map(|(l, &d)| (DECAY * l + (1.0 - DECAY) * d as f64).max(0.0))
        .collect()
}

/// Per-district share of hotspots over share of area.
pub fn overpolicing_scores(hotspots: &[usize], size: usize) -> Result<Vec<f64>, MetricError> {
    if hotspots.is_empty() {
        return Err(MetricError::NoSelections);
    }
    let mut counts = [0usize; DISTRICTS];
    for &h in hotspots {
        counts[district_of(h, size)] += 1;
    }
    let cells = (size * size) as f64;
    let per_district = district_sizes(size);
    Ok(counts
        .iter()
        .zip(per_district)
        .map(|(&c, area)| (c as f64 / hotspots.len() as f64) / (area as f64 / cells))
        .collect())
}

/// Snapshot fairness: average pairwise RPD of the overpolicing scores.
pub fn district_rpd(hotspots: &[usize], size: usize) -> Result<f64, MetricError> {
    avg_pairwise_rpd(&overpolicing_scores(hotspots, size)?)
}

fn district_sizes(size: usize) -> [usize; DISTRICTS] {
    let mut s = [0; DISTRICTS];
    for c in 0..size * size {
        s[district_of(c, size)] += 1;
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicingInputs {
    pub lambda_hat: Vec<f64>,
}

/// Hotspot cells in ascending order.
pub type Hotspots = Vec<usize>;

#[derive(Debug, Clone)]
pub struct HotspotAgent {
    pub hotspot_count: usize,
}

impl SystemAgent<PolicingInputs> for HotspotAgent {
    type Outputs = Vec<f64>;
    type Decisions = Hotspots;

    fn predict(&self, inputs: &PolicingInputs) -> Vec<f64> {
        inputs.lambda_hat.clone()
    }

    fn decide(&self, intensity: &Vec<f64>) -> Hotspots {
        allocate_hotspots(intensity, self.hotspot_count)
    }
}

#[derive(Debug, Clone)]
pub struct GridEnvironment {
    pub params: PolicingParams,
    pub grid_size: usize,
}

impl EnvironmentModel for GridEnvironment {
    type State = GridEnvState;
    type Batch = PolicingInputs;
    type Decisions = Hotspots;

    fn init(&self, rng: &mut RngStream) -> GridEnvState {
        police_init(self.grid_size, rng)
    }

    fn project(&self, state: &GridEnvState, _rng: &mut RngStream) -> Result<PolicingInputs, SimError> {
        Ok(PolicingInputs {
            lambda_hat: state.lambda_hat.clone(),
        })
    }

    fn batch_len(&self, batch: &PolicingInputs) -> usize {
        batch.lambda_hat.len()
    }

    fn shift(&self, mut state: GridEnvState, _b: &PolicingInputs, hotspots: &Hotspots, rng: &mut RngStream) -> GridEnvState {
        let area = effect_area(hotspots, state.size, self.params.effect_range);
        let (incidents, discovered) = discover_incidents(&state.lambda_true, &area, &self.params, rng);
        state.lambda_hat = update_prediction(&state.lambda_hat, &discovered);
        state.incidents = incidents;
        state.discovered = discovered;
        state.step += 1;
        state
    }

    fn summarize(&self, step: usize, state: &GridEnvState, _b: &PolicingInputs, hotspots: &Hotspots) -> Snapshot {
        let size = state.size;
        let mut groups: Vec<GroupStats> = (0..DISTRICTS)
            .map(|d| GroupStats {
                label: format!("d{d}"),
                population: 0,
                mean_feature: 0.0,
                selected: 0,
                total: 0,
                positives: 0,
                true_positives: 0,
            })
            .collect();
        for c in 0..state.cells() {
            let g = &mut groups[district_of(c, size)];
            g.population += 1;
            g.total += 1;
            g.mean_feature += state.lambda_hat[c];
            g.positives += state.incidents[c];
            g.true_positives += state.discovered[c];
        }
        for &h in hotspots {
            groups[district_of(h, size)].selected += 1;
        }
        for g in &mut groups {
            g.mean_feature /= g.population as f64;
        }
        Snapshot {
            step,
            groups,
            utility: state.discovered.iter().sum::<u64>() as f64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PolicingCase {
    pub space: ConfigSpace,
    pub scale: PolicingScale,
}

impl PolicingCase {
    pub fn new(space: ConfigSpace, scale: PolicingScale) -> Self {
        Self { space, scale }
    }
}

impl Default for PolicingCase {
    fn default() -> Self {
        Self::new(default_space(), PolicingScale::default())
    }
}

impl Scenario for PolicingCase {
    fn simulate(&self, config: &Configuration, k: usize, rng: RngStream) -> Result<Trace, SimError> {
        self.scale.validate()?;
        let params = PolicingParams::decode(&self.space, config, self.scale.hotspot_count)?;
        let env = GridEnvironment {
            params,
            grid_size: self.scale.grid_size,
        };
        let mut agent = HotspotAgent {
            hotspot_count: params.hotspot_count,
        };
        simulate_trace(&env, &mut agent, config, k, rng)
    }
}
