//! Low-complexity descent on the billing references.
//!
//! Starting from the restricted optimum, each iteration nudges the
//! reference of every location whose load ratio sits above the average
//! downward (and the rest upward), reads back the provider's response, and
//! keeps the step only when the induced prices stay feasible and the load
//! index does not increase; otherwise the step is reverted and halved. Only
//! the observable response is used, never the provider's internal data.

use crate::benchmarks::solve_restricted;
use crate::error::{Error, Result};
use crate::model::{self, SlotProblem};
use crate::numerics::QpConfig;
use crate::stage2::best_response;

#[derive(Debug, Clone)]
pub struct DescentConfig {
    /// Stop when an accepted step changes the load index by no more than
    /// this; defaults to `1e-8 * (1 + starting index)`.
    pub epsilon: Option<f64>,
    /// Initial step; defaults to a tenth of the widest box gap.
    pub step0: Option<f64>,
    pub max_iter: u32,
    /// Consecutive reverted steps after which the search gives up.
    pub max_halvings: u32,
    pub qp: QpConfig,
    /// Price-feasibility slack on the induced prices.
    pub feas_tol: f64,
}

impl Default for DescentConfig {
    fn default() -> Self {
        Self {
            epsilon: None,
            step0: None,
            max_iter: 10_000,
            max_halvings: 40,
            qp: QpConfig::default(),
            feas_tol: 1e-8,
        }
    }
}

/// One step of the search, for inspection and regression checks.
#[derive(Debug, Clone)]
pub struct DescentStep {
    pub iteration: u32,
    pub reference: Vec<f64>,
    pub eli: f64,
    pub step_size: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct HeuristicSolution {
    pub reference: Vec<f64>,
    pub energy: Vec<f64>,
    pub eli: f64,
    pub trace: Vec<DescentStep>,
    pub converged: bool,
    /// Set when the restricted initializer was infeasible and the search
    /// started from the box ceiling instead.
    pub fallback_start: bool,
    /// Set when the returned point still violates the price constraints
    /// (possible only on a fallback start that no step could repair).
    pub price_infeasible: bool,
}

/// Runs the descent on one slot.
pub fn descent_solve(slot: &SlotProblem, cfg: &DescentConfig) -> Result<HeuristicSolution> {
    slot.check_feasible()?;
    let n = slot.locations();

    let (mut reference, fallback_start) = match solve_restricted(slot, &cfg.qp) {
        Ok(rs) => (rs.reference, false),
        Err(Error::RestrictedInfeasible(_)) => (slot.energy_hi.clone(), true),
        Err(e) => return Err(e),
    };
    let mut response = best_response(slot, &reference)?;
    let mut eli = model::eli(slot, &response.energy);

    let epsilon = cfg.epsilon.unwrap_or(1e-8 * (1.0 + eli));
    let widest_gap = (0..n)
        .map(|i| slot.energy_hi[i] - slot.energy_lo[i])
        .fold(0.0f64, f64::max);
    let mut step = cfg.step0.unwrap_or(0.1 * widest_gap);

    let mut trace = vec![DescentStep {
        iteration: 0,
        reference: reference.clone(),
        eli,
        step_size: step,
        accepted: true,
    }];
    let mut converged = false;
    let mut consecutive_reverts = 0;

    for iteration in 1..=cfg.max_iter {
        let ratios = model::load_ratios(slot, &response.energy);
        let avg = ratios.iter().sum::<f64>() / n as f64;
        let candidate: Vec<f64> = (0..n)
            .map(|i| {
                let direction = if ratios[i] > avg {
                    -slot.rate_per_mwh[i] / slot.sensitivity[i]
                } else {
                    slot.rate_per_mwh[i] / slot.sensitivity[i]
                };
                reference[i] + step * direction
            })
            .collect();
        let cand_response = best_response(slot, &candidate)?;
        let cand_eli = model::eli(slot, &cand_response.energy);
        let feasible =
            model::price_violation(slot, &candidate, &cand_response.energy) <= cfg.feas_tol;
        let improved = cand_eli <= eli + 1e-12;

        if feasible && improved {
            let delta = (eli - cand_eli).abs();
            reference = candidate.clone();
            response = cand_response;
            eli = cand_eli;
            consecutive_reverts = 0;
            trace.push(DescentStep {
                iteration,
                reference: candidate,
                eli,
                step_size: step,
                accepted: true,
            });
            if delta <= epsilon {
                converged = true;
                break;
            }
        } else {
            trace.push(DescentStep {
                iteration,
                reference: candidate,
                eli: cand_eli,
                step_size: step,
                accepted: false,
            });
            step *= 0.5;
            consecutive_reverts += 1;
            if consecutive_reverts >= cfg.max_halvings {
                break;
            }
        }
    }

    let price_infeasible =
        model::price_violation(slot, &reference, &response.energy) > cfg.feas_tol;
    Ok(HeuristicSolution {
        reference,
        energy: response.energy,
        eli,
        trace,
        converged,
        fallback_start,
        price_infeasible,
    })
}
