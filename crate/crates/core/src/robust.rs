//! Worst-case load balancing under bounded background-load forecast error.
//!
//! The load index is convex and increasing in the realized background load,
//! so the inner maximization over a box of forecast errors is attained at
//! the upper corner. Pricing against that corner yields a guarantee: any
//! realized error inside the box produces a load index no worse than the
//! optimized worst case.

use crate::bilevel::{branch_and_bound, BilevelMiqp, BnbConfig};
use crate::error::{Error, Result};
use crate::heuristic::{descent_solve, DescentConfig};
use crate::model::{self, Diagnostics, Method, SlotProblem, SolveReport};
use crate::stage2::best_response;

/// Box bounds on the background-load forecast error, MWh per location.
#[derive(Debug, Clone)]
pub struct UncertaintySet {
    pub delta_min: Vec<f64>,
    pub delta_max: Vec<f64>,
}

impl UncertaintySet {
    /// Symmetric set spanning `fraction` of each location's forecast.
    pub fn symmetric_fraction(background_mwh: &[f64], fraction: f64) -> Self {
        let delta_max: Vec<f64> = background_mwh.iter().map(|b| b * fraction).collect();
        let delta_min = delta_max.iter().map(|d| -d).collect();
        Self { delta_min, delta_max }
    }

    pub fn validate(&self, slot: &SlotProblem) -> Result<()> {
        let n = slot.locations();
        let mut problems = Vec::new();
        if self.delta_min.len() != n || self.delta_max.len() != n {
            problems.push(format!("error bounds must cover all {n} locations"));
        } else {
            for i in 0..n {
                if self.delta_min[i] > self.delta_max[i] {
                    problems.push(format!(
                        "location {i}: error lower bound {} exceeds upper bound {}",
                        self.delta_min[i], self.delta_max[i]
                    ));
                }
                if slot.background_mwh[i] + self.delta_max[i] > slot.capacity_mwh[i] {
                    problems.push(format!(
                        "location {i}: shifted background {} exceeds per-slot capacity {}",
                        slot.background_mwh[i] + self.delta_max[i],
                        slot.capacity_mwh[i]
                    ));
                }
                if slot.background_mwh[i] + self.delta_min[i] < 0.0 {
                    problems.push(format!(
                        "location {i}: shifted background {} is negative",
                        slot.background_mwh[i] + self.delta_min[i]
                    ));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }
}

/// The error maximizing the load index: the upper corner of the box.
pub fn worst_case_error(set: &UncertaintySet) -> Vec<f64> {
    set.delta_max.clone()
}

/// Stage-1 solver to run against the shifted forecast.
#[derive(Debug, Clone)]
pub enum WorstCaseMethod {
    Exact(BnbConfig),
    Heuristic(DescentConfig),
}

#[derive(Debug, Clone)]
pub struct RobustSolution {
    pub reference: Vec<f64>,
    /// Response and load index under the worst-case shift.
    pub worst_case_energy: Vec<f64>,
    pub worst_case_eli: f64,
    pub report: SolveReport,
    /// The slot as seen by the solver after the shift.
    pub shifted_slot: SlotProblem,
}

/// Rebuilds the slot with the background shifted by `delta`. Unless
/// `freeze_box` is set, the shrunken supply window is propagated into the
/// energy box; the frozen variant keeps the nominal box and shifts only the
/// load-index terms.
pub fn shifted_slot(slot: &SlotProblem, delta: &[f64], freeze_box: bool) -> Result<SlotProblem> {
    let n = slot.locations();
    let mut shifted = slot.clone();
    for i in 0..n {
        shifted.background_mwh[i] = slot.background_mwh[i] + delta[i];
        if !freeze_box {
            let supply = slot.capacity_mwh[i] - shifted.background_mwh[i];
            shifted.energy_hi[i] = slot.server_energy_cap[i].min(supply);
        }
    }
    shifted.check_feasible().map_err(|e| {
        Error::InfeasibleAfterShift(format!("shifted supply cannot host the target: {e}"))
    })?;
    Ok(shifted)
}

/// Optimizes the billing references against the worst-case forecast error.
pub fn solve_worst_case(
    slot: &SlotProblem,
    set: &UncertaintySet,
    method: &WorstCaseMethod,
    freeze_box: bool,
) -> Result<RobustSolution> {
    set.validate(slot)?;
    let delta = worst_case_error(set);
    let shifted = shifted_slot(slot, &delta, freeze_box)?;

    let (reference, energy, eli, lower, upper, diagnostics) = match method {
        WorstCaseMethod::Exact(cfg) => {
            let miqp = BilevelMiqp::build(&shifted)?;
            let sol = branch_and_bound(&miqp, cfg)?;
            let diag = Diagnostics {
                nodes: sol.diagnostics.nodes,
                iterations: 0,
                max_kkt_residual: sol.diagnostics.max_violation,
            };
            (sol.reference, sol.energy, sol.eli, Some(sol.lower_bound), sol.upper_bound, diag)
        }
        WorstCaseMethod::Heuristic(cfg) => {
            let sol = descent_solve(&shifted, cfg)?;
            let diag = Diagnostics {
                nodes: 0,
                iterations: sol.trace.len() as u64,
                max_kkt_residual: 0.0,
            };
            (sol.reference, sol.energy, sol.eli, None, None, diag)
        }
    };

    let cost = model::total_cost(&shifted, &reference, &energy);
    Ok(RobustSolution {
        reference: reference.clone(),
        worst_case_energy: energy.clone(),
        worst_case_eli: eli,
        report: SolveReport {
            method: Method::Robust,
            eli,
            total_cost: cost,
            lower_bound: lower,
            upper_bound: upper,
            diagnostics,
            energy,
            reference: Some(reference),
        },
        shifted_slot: shifted,
    })
}

/// Load index realized when the announced references meet an actual error
/// `delta`: the provider responds against the nominal slot (its own
/// constraints are unchanged) while the grid sees the shifted background.
pub fn realized_eli(slot: &SlotProblem, reference: &[f64], delta: &[f64]) -> Result<f64> {
    let response = best_response(slot, reference)?;
    let background: Vec<f64> = slot
        .background_mwh
        .iter()
        .zip(delta)
        .map(|(b, d)| b + d)
        .collect();
    Ok(model::eli_with_background(slot, &response.energy, &background))
}
