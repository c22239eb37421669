//! Experiment matrix: configuration file, scenario grid and batch runner.
//!
//! A config file is TOML with the sections `[scenario]`, `[mpc]`, `[safe]`
//! and `[sim]`. Every key is optional; an empty file yields the default
//! grid of amplitudes {6, 9, 12} × periods {10, 20, 30}, each run nominally
//! and with the lead braking at 4, 8 and 12 m/s², for all three
//! controllers.
//!
//! ```toml
//! [scenario]
//! A = [6, 9, 12]
//! T = [10, 20, 30]
//! nominal = true
//! brake_rates = [4, 8, 12]
//! t_brake = 37.5
//!
//! [sim]
//! dt = 0.05
//! controllers = ["mpc", "safe", "hybrid"]
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::mpc::MpcConfig;
use crate::report::{fmt_g, save_trace, write_plot, write_summary, PlotKind, SummaryRow};
use crate::safe_ctrl::SafeConfig;
use crate::sim::{
    run_simulation, Brake, Controller, ScenarioConfig, SimSettings, SimulationTrace,
    DEFAULT_T_BRAKE,
};

/// Scenario grid: every amplitude × period pair, once per lead behaviour.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub amplitudes: Vec<f64>,
    pub periods: Vec<f64>,
    /// Run each pair without a brake event.
    pub nominal: bool,
    pub brake_rates: Vec<f64>,
    pub t_brake: f64,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            amplitudes: vec![6.0, 9.0, 12.0],
            periods: vec![10.0, 20.0, 30.0],
            nominal: true,
            brake_rates: vec![4.0, 8.0, 12.0],
            t_brake: DEFAULT_T_BRAKE,
        }
    }
}

/// One cell of the grid, before choosing a controller.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub amplitude: f64,
    pub period: f64,
    pub brake_rate: Option<f64>,
    pub config: ScenarioConfig,
}

impl Scenario {
    /// File-name stem, e.g. `A6_T10_nominal` or `A12_T30_brake12`.
    pub fn label(&self) -> String {
        let lead = match self.brake_rate {
            None => "nominal".to_string(),
            Some(r) => format!("brake{}", fmt_g(r)),
        };
        format!("A{}_T{}_{lead}", fmt_g(self.amplitude), fmt_g(self.period))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub grid: Grid,
    /// Template for every scenario; amplitude, period and brake are
    /// overwritten per cell.
    pub base: ScenarioConfig,
    pub settings: SimSettings,
    pub controllers: Vec<Controller>,
}

impl Default for RunManifest {
    fn default() -> Self {
        Self {
            grid: Grid::default(),
            base: ScenarioConfig::default(),
            settings: SimSettings::default(),
            controllers: Controller::ALL.to_vec(),
        }
    }
}

impl RunManifest {
    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if g.amplitudes.is_empty() || g.periods.is_empty() {
            return Err(Error::InvalidScenario(
                "grid needs at least one A and one T".into(),
            ));
        }
        if !g.nominal && g.brake_rates.is_empty() {
            return Err(Error::InvalidScenario(
                "grid has no lead behaviour: enable nominal or list brake rates".into(),
            ));
        }
        if self.controllers.is_empty() {
            return Err(Error::InvalidScenario("no controllers selected".into()));
        }
        self.settings.validate()?;
        for s in self.scenarios() {
            s.config.validate()?;
        }
        Ok(())
    }

    /// Grid cells in output order: nominal first, then by brake rate; within
    /// each, by amplitude then period.
    pub fn scenarios(&self) -> Vec<Scenario> {
        let g = &self.grid;
        let leads = g
            .nominal
            .then_some(None)
            .into_iter()
            .chain(g.brake_rates.iter().map(|&r| Some(r)));
        let mut out = Vec::new();
        for brake_rate in leads {
            for &amplitude in &g.amplitudes {
                for &period in &g.periods {
                    out.push(Scenario {
                        amplitude,
                        period,
                        brake_rate,
                        config: ScenarioConfig {
                            amplitude,
                            period,
                            brake: brake_rate.map(|rate| Brake {
                                rate,
                                t_brake: g.t_brake,
                            }),
                            ..self.base.clone()
                        },
                    });
                }
            }
        }
        out
    }

    pub fn cell_count(&self) -> usize {
        self.scenarios().len() * self.controllers.len()
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    scenario: RawScenario,
    #[serde(default)]
    mpc: RawMpc,
    #[serde(default)]
    safe: RawSafe,
    #[serde(default)]
    sim: RawSim,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(rename = "A")]
    amplitudes: Option<Vec<f64>>,
    #[serde(rename = "T")]
    periods: Option<Vec<f64>>,
    nominal: Option<bool>,
    brake_rates: Option<Vec<f64>>,
    t_brake: Option<f64>,
    v_a0: Option<f64>,
    d0: Option<f64>,
    ego_v0: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMpc {
    horizon: Option<usize>,
    prediction_dt: Option<f64>,
    q_p: Option<f64>,
    q_v: Option<f64>,
    q_a: Option<f64>,
    r: Option<f64>,
    d_c: Option<f64>,
    u_min: Option<f64>,
    u_max: Option<f64>,
    v_min: Option<f64>,
    v_max_limit: Option<f64>,
    slack_weight: Option<f64>,
    max_iter: Option<usize>,
    accel_window: Option<usize>,
    speed_lookahead: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSafe {
    levels: Option<Vec<f64>>,
    a_nom: Option<f64>,
    a_max: Option<f64>,
    reaction_time: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    dt: Option<f64>,
    t_sim: Option<f64>,
    tau: Option<f64>,
    vehicle_length: Option<f64>,
    t_track: Option<f64>,
    u_ceil: Option<f64>,
    u_floor_mpc: Option<f64>,
    u_floor_nominal: Option<f64>,
    u_floor_emergency: Option<f64>,
    controllers: Option<Vec<String>>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl RawConfig {
    fn into_manifest(self) -> Result<RunManifest> {
        let mut m = RunManifest::default();

        let s = self.scenario;
        set(&mut m.grid.amplitudes, s.amplitudes);
        set(&mut m.grid.periods, s.periods);
        set(&mut m.grid.nominal, s.nominal);
        set(&mut m.grid.brake_rates, s.brake_rates);
        set(&mut m.grid.t_brake, s.t_brake);
        set(&mut m.base.v_a0, s.v_a0);
        set(&mut m.base.d0, s.d0);
        set(&mut m.base.ego_v0, s.ego_v0);

        let p = self.mpc;
        let mpc: &mut MpcConfig = &mut m.settings.mpc;
        set(&mut mpc.horizon, p.horizon);
        set(&mut mpc.prediction_dt, p.prediction_dt);
        set(&mut mpc.q_p, p.q_p);
        set(&mut mpc.q_v, p.q_v);
        set(&mut mpc.q_a, p.q_a);
        set(&mut mpc.r, p.r);
        set(&mut mpc.d_c, p.d_c);
        set(&mut mpc.u_min, p.u_min);
        set(&mut mpc.u_max, p.u_max);
        set(&mut mpc.v_min, p.v_min);
        set(&mut mpc.v_max_limit, p.v_max_limit);
        set(&mut mpc.slack_weight, p.slack_weight);
        set(&mut mpc.max_iter, p.max_iter);
        set(&mut mpc.accel_window, p.accel_window);
        set(&mut mpc.speed_lookahead, p.speed_lookahead);

        let f = self.safe;
        let safe: &mut SafeConfig = &mut m.settings.safe;
        set(&mut safe.levels, f.levels);
        set(&mut safe.a_nom, f.a_nom);
        set(&mut safe.a_max, f.a_max);
        set(&mut safe.reaction_time, f.reaction_time);

        let x = self.sim;
        set(&mut m.base.dt, x.dt);
        set(&mut m.base.t_sim, x.t_sim);
        set(&mut m.settings.tau, x.tau);
        set(&mut m.settings.vehicle_length, x.vehicle_length);
        let t = &mut m.settings.tracker;
        set(&mut t.t_track, x.t_track);
        set(&mut t.u_ceil, x.u_ceil);
        set(&mut t.u_floor_mpc, x.u_floor_mpc);
        set(&mut t.u_floor_nominal, x.u_floor_nominal);
        set(&mut t.u_floor_emergency, x.u_floor_emergency);
        if let Some(names) = x.controllers {
            m.controllers = names
                .iter()
                .map(|n| n.parse())
                .collect::<Result<Vec<Controller>>>()?;
            m.controllers.sort();
            m.controllers.dedup();
        }
        Ok(m)
    }
}

/// 1-based line of a byte offset.
fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses config text; `origin` names the source in error messages.
pub fn parse_config_str(text: &str, origin: &Path) -> Result<RunManifest> {
    let config_error = |message: String| Error::Config {
        path: origin.to_path_buf(),
        message,
    };
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of(text, s.start)).unwrap_or(1);
        config_error(format!("line {line}: {}", e.message()))
    })?;
    let manifest = raw
        .into_manifest()
        .map_err(|e| config_error(e.to_string()))?;
    manifest
        .validate()
        .map_err(|e| config_error(e.to_string()))?;
    Ok(manifest)
}

pub fn parse_config(path: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config {
        path: path.to_path_buf(),
        message: format!("cannot read file: {e}"),
    })?;
    parse_config_str(&text, path)
}

/// Result of one (scenario, controller) cell.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub scenario: Scenario,
    pub controller: Controller,
    pub trace: SimulationTrace,
}

/// Runs every cell on a pool of `workers` threads (all cores when `None`).
/// Results come back in grid order regardless of scheduling.
pub fn run_cells(manifest: &RunManifest, workers: Option<usize>) -> Result<Vec<CellResult>> {
    manifest.validate()?;
    let cells: Vec<(Scenario, Controller)> = manifest
        .scenarios()
        .into_iter()
        .flat_map(|s| manifest.controllers.iter().map(move |&c| (s.clone(), c)))
        .collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        cells
            .into_par_iter()
            .map(|(scenario, controller)| {
                let trace = run_simulation(&scenario.config, controller, &manifest.settings)?;
                Ok(CellResult {
                    scenario,
                    controller,
                    trace,
                })
            })
            .collect()
    })
}

pub fn summarize(results: &[CellResult]) -> Result<Vec<SummaryRow>> {
    results
        .iter()
        .map(|r| {
            SummaryRow::from_trace(
                r.scenario.amplitude,
                r.scenario.period,
                r.scenario.brake_rate,
                r.controller,
                &r.trace,
            )
        })
        .collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes `traces/<label>_<controller>.csv`, `plots/speed_<label>.csv`,
/// `plots/distance_<label>.csv` and, last, `summary.csv`.
pub fn write_outputs(out_dir: &Path, results: &[CellResult]) -> Result<()> {
    let summary = summarize(results)?;
    let traces = out_dir.join("traces");
    let plots = out_dir.join("plots");
    for dir in [&traces, &plots] {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir.as_path(), e))?;
    }
    for r in results {
        let name = format!("{}_{}.csv", r.scenario.label(), r.controller);
        save_trace(&traces.join(name), &r.trace)?;
    }
    for group in results.chunk_by(|a, b| a.scenario == b.scenario) {
        let runs: Vec<(Controller, &SimulationTrace)> =
            group.iter().map(|r| (r.controller, &r.trace)).collect();
        let label = group[0].scenario.label();
        for (kind, stem) in [(PlotKind::Speed, "speed"), (PlotKind::Distance, "distance")] {
            let mut buf = Vec::new();
            write_plot(&mut buf, kind, &runs)?;
            write_file(&plots.join(format!("{stem}_{label}.csv")), &buf)?;
        }
    }
    let mut buf = Vec::new();
    write_summary(&mut buf, &summary)?;
    write_file(&out_dir.join("summary.csv"), &buf)
}

/// Runs the manifest and writes all artifacts under `out_dir`.
pub fn run_matrix(
    manifest: &RunManifest,
    out_dir: &Path,
    workers: Option<usize>,
) -> Result<Vec<CellResult>> {
    let results = run_cells(manifest, workers)?;
    write_outputs(out_dir, &results)?;
    Ok(results)
}

/// Output directory from the command line, unless `HYBRIDACC_OUT` is set.
pub fn resolve_out_dir(flag: Option<PathBuf>, env: Option<std::ffi::OsString>) -> PathBuf {
    match env {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => flag.unwrap_or_else(|| PathBuf::from("results")),
    }
}
