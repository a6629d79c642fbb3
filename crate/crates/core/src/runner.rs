//! Experiment orchestration: runs the requested solvers over every slot of
//! a scenario, attaches per-cell failures without aborting the run, and
//! emits tables, plot-ready series, and a summary document.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchmarks::{solve_base_price, solve_integrated, solve_restricted};
use crate::bilevel::{branch_and_bound, BilevelMiqp, BnbConfig};
use crate::error::{Error, Result};
use crate::heuristic::{descent_solve, DescentConfig};
use crate::model::{self, Diagnostics, Method, Scenario, SlotProblem, SolveReport};
use crate::numerics::QpConfig;
use crate::robust::{solve_worst_case, UncertaintySet, WorstCaseMethod};
use crate::scenario::{fmt_f64, load_scenario, synth_scenario, SynthConfig};

/// One experiment: scenario, methods, and output destination.
#[derive(Debug, Clone)]
pub struct RunManifest {
    /// Scenario directory; `None` synthesizes the default shape from `seed`.
    pub scenario: Option<PathBuf>,
    pub methods: Vec<Method>,
    pub workload_scale: f64,
    /// Symmetric background-load uncertainty as a fraction, for `robust`.
    pub uncertainty: Option<f64>,
    /// Keep the provider's energy box nominal when shifting the forecast.
    pub wcp_freeze_box: bool,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Force single-threaded slot execution.
    pub deterministic: bool,
    /// Overrides the solver tolerance (the `DCDR_TOL` knob).
    pub tolerance: Option<f64>,
}

impl RunManifest {
    pub fn new(out_dir: PathBuf) -> Self {
        Self {
            scenario: None,
            methods: vec![Method::Integrated, Method::Restricted, Method::Exact],
            workload_scale: 1.0,
            uncertainty: None,
            wcp_freeze_box: false,
            seed: 42,
            out_dir,
            deterministic: false,
            tolerance: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.methods.is_empty() {
            problems.push("no methods requested".into());
        }
        if !(self.workload_scale > 0.0) {
            problems.push(format!("workload scale must be positive, got {}", self.workload_scale));
        }
        if self.methods.contains(&Method::Robust) && self.uncertainty.is_none() {
            problems.push("method `robust` requires an uncertainty fraction".into());
        }
        if let Some(u) = self.uncertainty {
            if !(u >= 0.0) {
                problems.push(format!("uncertainty fraction must be nonnegative, got {u}"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }
}

/// Why a cell failed, coarse enough to drive the exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellErrorKind {
    Infeasible,
    Internal,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellError {
    pub kind: CellErrorKind,
    pub message: String,
}

impl From<Error> for CellError {
    fn from(e: Error) -> Self {
        let kind = match e {
            Error::InfeasibleSlot(_)
            | Error::RestrictedInfeasible(_)
            | Error::ExactInfeasible(_)
            | Error::InfeasibleAfterShift(_) => CellErrorKind::Infeasible,
            _ => CellErrorKind::Internal,
        };
        CellError { kind, message: e.to_string() }
    }
}

pub type CellResult = std::result::Result<SolveReport, CellError>;

#[derive(Debug)]
pub struct RunOutput {
    pub scenario: Scenario,
    /// Indexed `[slot][method as requested]`.
    pub cells: Vec<Vec<(Method, CellResult)>>,
    pub summary: Summary,
}

impl RunOutput {
    /// Process exit code: 0 clean, 3 when any cell was infeasible, 4 when
    /// any cell failed internally.
    pub fn exit_code(&self) -> i32 {
        let mut code = 0;
        for row in &self.cells {
            for (_, cell) in row {
                if let Err(e) = cell {
                    code = code.max(match e.kind {
                        CellErrorKind::Infeasible => 3,
                        CellErrorKind::Internal => 4,
                    });
                }
            }
        }
        code
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub schema: String,
    pub scenario: String,
    pub workload_scale: f64,
    pub slots: usize,
    pub methods: Vec<String>,
    pub failed_cells: usize,
    /// Mean over slots of the per-slot load-index reduction of `exact`
    /// against `base-price`, percent.
    pub avg_eli_reduction_vs_base_pct: Option<f64>,
    /// Reduction of the summed provider cost of `exact` against
    /// `base-price`, percent.
    pub cost_reduction_vs_base_pct: Option<f64>,
    /// Mean over slots of the exact solver's gap to the integrated lower
    /// bound, percent.
    pub avg_gap_to_lower_bound_pct: Option<f64>,
    pub totals: Vec<MethodTotals>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodTotals {
    pub method: String,
    pub eli_sum: f64,
    pub cost_sum: f64,
}

/// Per-method solver settings derived from the manifest.
#[derive(Debug, Clone)]
struct SolverSettings {
    qp: QpConfig,
    bnb: BnbConfig,
    descent: DescentConfig,
}

impl SolverSettings {
    fn from_manifest(manifest: &RunManifest) -> Self {
        let mut qp = QpConfig::default();
        if let Some(tol) = manifest.tolerance {
            qp.tol = tol;
        }
        let bnb = BnbConfig {
            qp: QpConfig { tol: manifest.tolerance.unwrap_or(1e-8).min(1e-8), ..qp.clone() },
            ..BnbConfig::default()
        };
        let descent = DescentConfig { qp: qp.clone(), ..DescentConfig::default() };
        Self { qp, bnb, descent }
    }
}

fn scaled_scenario(manifest: &RunManifest) -> Result<Scenario> {
    let mut scenario = match &manifest.scenario {
        Some(dir) => load_scenario(dir)?,
        None => synth_scenario(&SynthConfig { seed: manifest.seed, ..SynthConfig::default() }),
    };
    for w in scenario.workload.iter_mut() {
        *w *= manifest.workload_scale;
    }
    scenario.validate()?;
    Ok(scenario)
}

fn solve_cell(
    scenario: &Scenario,
    slot_index: usize,
    method: Method,
    manifest: &RunManifest,
    settings: &SolverSettings,
) -> std::result::Result<SolveReport, Error> {
    let slot = model::reduce_to_energy_space(scenario, slot_index)?;
    match method {
        Method::Integrated => {
            let sol = solve_integrated(&slot)?;
            let cost = base_priced_cost(&slot, &sol.energy);
            Ok(SolveReport {
                method,
                eli: sol.eli,
                total_cost: cost,
                lower_bound: Some(sol.eli),
                upper_bound: None,
                diagnostics: Diagnostics::default(),
                energy: sol.energy,
                reference: None,
            })
        }
        Method::Restricted => {
            let sol = solve_restricted(&slot, &settings.qp)?;
            let cost = model::total_cost(&slot, &sol.reference, &sol.energy);
            Ok(SolveReport {
                method,
                eli: sol.eli,
                total_cost: cost,
                lower_bound: None,
                upper_bound: Some(sol.eli),
                diagnostics: Diagnostics::default(),
                energy: sol.energy,
                reference: Some(sol.reference),
            })
        }
        Method::Exact => {
            let miqp = BilevelMiqp::build(&slot)?;
            let sol = branch_and_bound(&miqp, &settings.bnb)?;
            let cost = model::total_cost(&slot, &sol.reference, &sol.energy);
            Ok(SolveReport {
                method,
                eli: sol.eli,
                total_cost: cost,
                lower_bound: Some(sol.lower_bound),
                upper_bound: sol.upper_bound,
                diagnostics: Diagnostics {
                    nodes: sol.diagnostics.nodes,
                    iterations: 0,
                    max_kkt_residual: sol.diagnostics.max_violation,
                },
                energy: sol.energy,
                reference: Some(sol.reference),
            })
        }
        Method::Heuristic => {
            let integrated = solve_integrated(&slot)?;
            let sol = descent_solve(&slot, &settings.descent)?;
            let cost = model::total_cost(&slot, &sol.reference, &sol.energy);
            let start = (!sol.fallback_start).then(|| sol.trace[0].eli);
            Ok(SolveReport {
                method,
                eli: sol.eli,
                total_cost: cost,
                lower_bound: Some(integrated.eli),
                upper_bound: start,
                diagnostics: Diagnostics {
                    nodes: 0,
                    iterations: sol.trace.len() as u64,
                    max_kkt_residual: model::price_violation(&slot, &sol.reference, &sol.energy),
                },
                energy: sol.energy,
                reference: Some(sol.reference),
            })
        }
        Method::Robust => {
            let fraction = manifest.uncertainty.expect("validated");
            let set = UncertaintySet::symmetric_fraction(&slot.background_mwh, fraction);
            let sol = solve_worst_case(
                &slot,
                &set,
                &WorstCaseMethod::Exact(settings.bnb.clone()),
                manifest.wcp_freeze_box,
            )?;
            Ok(sol.report)
        }
        Method::BasePrice => {
            let sol = solve_base_price(&slot)?;
            Ok(SolveReport {
                method,
                eli: sol.eli,
                total_cost: sol.cost,
                lower_bound: None,
                upper_bound: None,
                diagnostics: Diagnostics::default(),
                energy: sol.energy,
                reference: None,
            })
        }
    }
}

/// Cost of a dispatch charged at base prices (reference equal to
/// consumption), used for methods that do not price dynamically.
fn base_priced_cost(slot: &SlotProblem, energy: &[f64]) -> f64 {
    energy.iter().zip(&slot.base_price).map(|(e, a)| e * a).sum()
}

/// Runs every requested method over every slot and writes the report files.
pub fn run(manifest: &RunManifest) -> Result<RunOutput> {
    manifest.validate()?;
    let scenario = scaled_scenario(manifest)?;
    let settings = SolverSettings::from_manifest(manifest);

    let solve_slot = |t: usize| -> Vec<(Method, CellResult)> {
        manifest
            .methods
            .iter()
            .map(|&m| {
                (m, solve_cell(&scenario, t, m, manifest, &settings).map_err(CellError::from))
            })
            .collect()
    };
    let cells: Vec<Vec<(Method, CellResult)>> = if manifest.deterministic {
        (0..scenario.slots).map(solve_slot).collect()
    } else {
        (0..scenario.slots).into_par_iter().map(solve_slot).collect()
    };

    let summary = summarize(&scenario, manifest, &cells);
    emit(&scenario, manifest, &cells, &summary)?;
    Ok(RunOutput { scenario, cells, summary })
}

fn method_series(
    cells: &[Vec<(Method, CellResult)>],
    method: Method,
) -> Vec<(usize, &SolveReport)> {
    let mut out = Vec::new();
    for (t, row) in cells.iter().enumerate() {
        for (m, cell) in row {
            if *m == method {
                if let Ok(report) = cell {
                    out.push((t, report));
                }
            }
        }
    }
    out
}

fn summarize(
    scenario: &Scenario,
    manifest: &RunManifest,
    cells: &[Vec<(Method, CellResult)>],
) -> Summary {
    let failed_cells =
        cells.iter().flatten().filter(|(_, cell)| cell.is_err()).count();
    let exact = method_series(cells, Method::Exact);
    let base = method_series(cells, Method::BasePrice);

    let mut avg_eli_reduction = None;
    let mut cost_reduction = None;
    if !exact.is_empty() && exact.len() == base.len() && exact.len() == scenario.slots {
        let mut eli_acc = 0.0;
        let mut cost_exact = 0.0;
        let mut cost_base = 0.0;
        for ((_, e), (_, b)) in exact.iter().zip(&base) {
            eli_acc += (b.eli - e.eli) / b.eli * 100.0;
            cost_exact += e.total_cost;
            cost_base += b.total_cost;
        }
        avg_eli_reduction = Some(eli_acc / exact.len() as f64);
        cost_reduction = Some((cost_base - cost_exact) / cost_base * 100.0);
    }
    let mut gap = None;
    if !exact.is_empty() {
        let mut acc = 0.0;
        let mut count = 0;
        for (_, e) in &exact {
            if let Some(lb) = e.lower_bound {
                acc += (e.eli - lb) / lb * 100.0;
                count += 1;
            }
        }
        if count > 0 {
            gap = Some(acc / count as f64);
        }
    }

    let totals = manifest
        .methods
        .iter()
        .map(|&m| {
            let series = method_series(cells, m);
            MethodTotals {
                method: m.name().into(),
                eli_sum: series.iter().map(|(_, r)| r.eli).sum(),
                cost_sum: series.iter().map(|(_, r)| r.total_cost).sum(),
            }
        })
        .collect();

    Summary {
        schema: "dcdr-summary/1".into(),
        scenario: scenario.name.clone(),
        workload_scale: manifest.workload_scale,
        slots: scenario.slots,
        methods: manifest.methods.iter().map(|m| m.name().into()).collect(),
        failed_cells,
        avg_eli_reduction_vs_base_pct: avg_eli_reduction,
        cost_reduction_vs_base_pct: cost_reduction,
        avg_gap_to_lower_bound_pct: gap,
        totals,
    }
}

fn emit(
    scenario: &Scenario,
    manifest: &RunManifest,
    cells: &[Vec<(Method, CellResult)>],
    summary: &Summary,
) -> Result<()> {
    let dir = &manifest.out_dir;
    fs::create_dir_all(dir)?;

    let mut per_slot = String::from(
        "slot,method,eli,total_cost,lower_bound,upper_bound,nodes,iterations,\
         max_kkt_residual,error\n",
    );
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for (t, row) in cells.iter().enumerate() {
        for (m, cell) in row {
            match cell {
                Ok(r) => per_slot.push_str(&format!(
                    "{t},{m},{},{},{},{},{},{},{},\n",
                    fmt_f64(r.eli),
                    fmt_f64(r.total_cost),
                    opt(r.lower_bound),
                    opt(r.upper_bound),
                    r.diagnostics.nodes,
                    r.diagnostics.iterations,
                    fmt_f64(r.diagnostics.max_kkt_residual),
                )),
                Err(e) => per_slot.push_str(&format!(
                    "{t},{m},,,,,,,,\"{}\"\n",
                    e.message.replace('"', "'").replace('\n', "; ")
                )),
            }
        }
    }
    fs::write(dir.join("per_slot.csv"), per_slot)?;

    for &method in &manifest.methods {
        let series = method_series(cells, method);
        if series.is_empty() {
            continue;
        }
        let mut eli_out = String::from("slot,value\n");
        let mut cost_out = String::from("slot,value\n");
        let mut energy_out = String::from("slot,location,value\n");
        let mut reference_out = String::from("slot,location,value\n");
        let mut price_out = String::from("slot,location,value\n");
        let mut any_reference = false;
        for (t, r) in &series {
            eli_out.push_str(&format!("{t},{}\n", fmt_f64(r.eli)));
            cost_out.push_str(&format!("{t},{}\n", fmt_f64(r.total_cost)));
            for (i, e) in r.energy.iter().enumerate() {
                energy_out.push_str(&format!("{t},{i},{}\n", fmt_f64(*e)));
            }
            if let Some(reference) = &r.reference {
                any_reference = true;
                let slot = model::reduce_to_energy_space(scenario, *t)?;
                let prices = model::implied_prices(&slot, reference, &r.energy);
                for i in 0..reference.len() {
                    reference_out.push_str(&format!("{t},{i},{}\n", fmt_f64(reference[i])));
                    price_out.push_str(&format!("{t},{i},{}\n", fmt_f64(prices[i])));
                }
            }
        }
        fs::write(dir.join(format!("eli_{method}.csv")), eli_out)?;
        fs::write(dir.join(format!("cost_{method}.csv")), cost_out)?;
        fs::write(dir.join(format!("energy_{method}.csv")), energy_out)?;
        if any_reference {
            fs::write(dir.join(format!("reference_{method}.csv")), reference_out)?;
            fs::write(dir.join(format!("price_{method}.csv")), price_out)?;
        }
    }

    let text = toml::to_string_pretty(summary)
        .map_err(|e| Error::Parse(format!("serializing summary: {e}")))?;
    fs::write(dir.join("summary.toml"), text)?;
    Ok(())
}

/// One point of the workload sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub scale: f64,
    pub eli_exact: f64,
    pub eli_base: f64,
    pub reduction_pct: f64,
}

/// Sweeps the workload scale over one slot, comparing exact pricing against
/// the base-price baseline, and writes `sweep.csv`.
pub fn sweep(
    manifest: &RunManifest,
    slot_index: usize,
    scales: &[f64],
) -> Result<Vec<SweepPoint>> {
    manifest.validate()?;
    let settings = SolverSettings::from_manifest(manifest);
    let base_scenario = match &manifest.scenario {
        Some(dir) => load_scenario(dir)?,
        None => synth_scenario(&SynthConfig { seed: manifest.seed, ..SynthConfig::default() }),
    };
    if slot_index >= base_scenario.slots {
        return Err(Error::Precondition(format!("sweep slot {slot_index} out of range")));
    }

    let solve_point = |&scale: &f64| -> Result<SweepPoint> {
        let mut scenario = base_scenario.clone();
        for w in scenario.workload.iter_mut() {
            *w *= scale;
        }
        let slot = model::reduce_to_energy_space(&scenario, slot_index)?;
        let exact = branch_and_bound(&BilevelMiqp::build(&slot)?, &settings.bnb)?;
        let base = solve_base_price(&slot)?;
        Ok(SweepPoint {
            scale,
            eli_exact: exact.eli,
            eli_base: base.eli,
            reduction_pct: (base.eli - exact.eli) / base.eli * 100.0,
        })
    };
    let points: Vec<SweepPoint> = if manifest.deterministic {
        scales.iter().map(solve_point).collect::<Result<_>>()?
    } else {
        scales.par_iter().map(solve_point).collect::<Result<_>>()?
    };

    fs::create_dir_all(&manifest.out_dir)?;
    let mut out = String::from("scale,eli_exact,eli_base,reduction_pct\n");
    for p in &points {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(p.scale),
            fmt_f64(p.eli_exact),
            fmt_f64(p.eli_base),
            fmt_f64(p.reduction_pct)
        ));
    }
    fs::write(manifest.out_dir.join("sweep.csv"), out)?;
    Ok(points)
}

/// Parses a `slot,value` series emitted by [`run`].
pub fn read_series(path: &Path) -> Result<Vec<(usize, f64)>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(2, ',');
        let slot = parts
            .next()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| Error::Parse(format!("{}:{}: bad slot", path.display(), i + 1)))?;
        let value = parts
            .next()
            .and_then(|s| s.parse::<f64>().ok())
            .ok_or_else(|| Error::Parse(format!("{}:{}: bad value", path.display(), i + 1)))?;
        out.push((slot, value));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_manifest(tag: &str, methods: Vec<Method>) -> RunManifest {
        let out = std::env::temp_dir().join(format!("dcdr-runner-{tag}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&out);
        RunManifest { methods, ..RunManifest::new(out) }
    }

    #[test]
    fn manifest_rejects_robust_without_uncertainty() {
        let m = tiny_manifest("reject", vec![Method::Robust]);
        assert!(matches!(m.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn emitted_series_round_trip_bit_exactly() {
        let mut manifest = tiny_manifest(
            "roundtrip",
            vec![Method::Integrated, Method::Restricted, Method::BasePrice],
        );
        manifest.scenario = None;
        manifest.deterministic = true;
        // A short synthetic run keeps the test quick.
        let scenario = synth_scenario(&SynthConfig { slots: 4, ..SynthConfig::default() });
        let dir = manifest.out_dir.join("scenario");
        crate::scenario::save_scenario(&scenario, &dir, "").unwrap();
        manifest.scenario = Some(dir);
        let output = run(&manifest).unwrap();
        assert_eq!(output.exit_code(), 0);

        let series = read_series(&manifest.out_dir.join("eli_integrated.csv")).unwrap();
        assert_eq!(series.len(), 4);
        for (t, value) in series {
            let report = output.cells[t]
                .iter()
                .find(|(m, _)| *m == Method::Integrated)
                .and_then(|(_, c)| c.as_ref().ok())
                .unwrap();
            assert_eq!(value.to_bits(), report.eli.to_bits());
        }
        let _ = fs::remove_dir_all(&manifest.out_dir);
    }

    #[test]
    fn parallel_and_serial_runs_emit_identical_bytes() {
        let scenario = synth_scenario(&SynthConfig { slots: 4, ..SynthConfig::default() });
        let methods = vec![Method::Integrated, Method::Restricted, Method::BasePrice];

        let mut serial = tiny_manifest("serial", methods.clone());
        let dir = serial.out_dir.join("scenario");
        crate::scenario::save_scenario(&scenario, &dir, "").unwrap();
        serial.scenario = Some(dir.clone());
        serial.deterministic = true;
        run(&serial).unwrap();

        let mut parallel = tiny_manifest("parallel", methods);
        parallel.scenario = Some(dir);
        parallel.deterministic = false;
        run(&parallel).unwrap();

        for file in ["per_slot.csv", "eli_integrated.csv", "summary.toml"] {
            let a = fs::read(serial.out_dir.join(file)).unwrap();
            let b = fs::read(parallel.out_dir.join(file)).unwrap();
            assert_eq!(a, b, "{file} differs between serial and parallel runs");
        }
        let _ = fs::remove_dir_all(&serial.out_dir);
        let _ = fs::remove_dir_all(&parallel.out_dir);
    }

    #[test]
    fn robust_and_heuristic_cells_solve() {
        let scenario = synth_scenario(&SynthConfig { slots: 2, ..SynthConfig::default() });
        let mut manifest =
            tiny_manifest("robust", vec![Method::Exact, Method::Heuristic, Method::Robust]);
        let dir = manifest.out_dir.join("scenario");
        crate::scenario::save_scenario(&scenario, &dir, "").unwrap();
        manifest.scenario = Some(dir);
        manifest.uncertainty = Some(0.1);
        manifest.deterministic = true;
        let output = run(&manifest).unwrap();
        assert_eq!(output.exit_code(), 0);
        for row in &output.cells {
            let exact = row[0].1.as_ref().unwrap();
            let heuristic = row[1].1.as_ref().unwrap();
            let robust = row[2].1.as_ref().unwrap();
            // The shifted worst case can only look worse than the nominal.
            assert!(robust.eli >= exact.eli - 1e-9);
            assert!(heuristic.eli >= exact.eli - 1e-6);
            assert!(heuristic.lower_bound.unwrap() <= heuristic.eli + 1e-6);
            assert!(heuristic.eli <= heuristic.upper_bound.unwrap() + 1e-6);
        }
        assert!(manifest.out_dir.join("eli_robust.csv").exists());
        assert!(manifest.out_dir.join("reference_heuristic.csv").exists());
        let _ = fs::remove_dir_all(&manifest.out_dir);
    }

    #[test]
    fn failed_cells_are_recorded_and_the_run_continues() {
        let mut scenario = synth_scenario(&SynthConfig { slots: 3, ..SynthConfig::default() });
        // Starve one slot so its reduction fails while others succeed.
        scenario.workload[1] = 5.0e6;
        let mut manifest = tiny_manifest("failures", vec![Method::Integrated]);
        let dir = manifest.out_dir.join("scenario");
        crate::scenario::save_scenario(&scenario, &dir, "").unwrap();
        manifest.scenario = Some(dir);
        manifest.deterministic = true;
        let output = run(&manifest).unwrap();
        assert_eq!(output.exit_code(), 3);
        assert!(output.cells[1][0].1.is_err());
        assert!(output.cells[0][0].1.is_ok());
        assert_eq!(output.summary.failed_cells, 1);
        let _ = fs::remove_dir_all(&manifest.out_dir);
    }
}
