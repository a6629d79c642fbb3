//! Load-index performance bounds and the fixed-price baseline.
//!
//! The integrated problem dispatches energy directly (no pricing) and lower
//! bounds the achievable load index; the restricted problem lifts the energy
//! box into the pricing stage and upper bounds it; the base-price baseline
//! reproduces a provider that simply chases the cheapest locations.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{self, reduction_coeffs, Scenario, SlotProblem};
use crate::numerics::{bisect, qp_solve, QpConfig, QpProblem, QpStatus};

/// Full-cooperation dispatch and its load index.
#[derive(Debug, Clone)]
pub struct IntegratedSolution {
    pub energy: Vec<f64>,
    pub eli: f64,
}

/// Pricing stage solved jointly with the unclamped response expression.
#[derive(Debug, Clone)]
pub struct RestrictedSolution {
    pub reference: Vec<f64>,
    pub energy: Vec<f64>,
    pub sigma: f64,
    pub eli: f64,
}

/// Provider response under fixed base prices.
#[derive(Debug, Clone)]
pub struct BasePriceSolution {
    pub energy: Vec<f64>,
    pub eli: f64,
    pub cost: f64,
}

/// Minimizes the load index over the energy box and equality directly.
///
/// The optimality system equalizes marginal load ratios, so each energy is
/// the clamp of an affine expression in one multiplier; bisection on the
/// weighted-energy residual pins the multiplier, which is then re-solved
/// exactly on the unclamped set.
pub fn solve_integrated(slot: &SlotProblem) -> Result<IntegratedSolution> {
    slot.check_feasible()?;
    let n = slot.locations();
    let point = |nu: f64, i: usize| -> f64 {
        (-slot.background_mwh[i] - nu * slot.rate_per_mwh[i] * slot.capacity_mwh[i] / 2.0)
            .clamp(slot.energy_lo[i], slot.energy_hi[i])
    };
    let residual = |nu: f64| -> f64 {
        (0..n).map(|i| slot.rate_per_mwh[i] * point(nu, i)).sum::<f64>() - slot.energy_target
    };
    let crossing = |i: usize, e: f64| -> f64 {
        -2.0 * (e + slot.background_mwh[i]) / (slot.rate_per_mwh[i] * slot.capacity_mwh[i])
    };
    let mut seed_lo = f64::INFINITY;
    let mut seed_hi = f64::NEG_INFINITY;
    for i in 0..n {
        seed_lo = seed_lo.min(crossing(i, slot.energy_hi[i]));
        seed_hi = seed_hi.max(crossing(i, slot.energy_lo[i]));
    }
    let root = bisect(residual, seed_lo, seed_hi, 1e-12)?.root;

    // Exact multiplier on the set the root leaves unclamped.
    let mut free = Vec::new();
    let mut clamped_sum = 0.0;
    for i in 0..n {
        let raw = -slot.background_mwh[i]
            - root * slot.rate_per_mwh[i] * slot.capacity_mwh[i] / 2.0;
        if raw < slot.energy_lo[i] {
            clamped_sum += slot.rate_per_mwh[i] * slot.energy_lo[i];
        } else if raw > slot.energy_hi[i] {
            clamped_sum += slot.rate_per_mwh[i] * slot.energy_hi[i];
        } else {
            free.push(i);
        }
    }
    let nu = if free.is_empty() {
        root
    } else {
        let mut num = clamped_sum - slot.energy_target;
        let mut den = 0.0;
        for &i in &free {
            let th = slot.rate_per_mwh[i];
            num -= th * slot.background_mwh[i];
            den += th * th * slot.capacity_mwh[i] / 2.0;
        }
        num / den
    };
    let energy: Vec<f64> = (0..n).map(|i| point(nu, i)).collect();
    let eli = model::eli(slot, &energy);
    Ok(IntegratedSolution { energy, eli })
}

/// Solves the integrated problem in the operational variables (workload and
/// server counts) as a generic QP. Exists to cross-validate the energy-space
/// reduction; production paths use [`solve_integrated`].
///
/// For conditioning, the variables are the two energy shares of each
/// location (workload-driven and server-driven, both MWh) rather than raw
/// request rates and server counts; the operational constraints are
/// expressed on those shares with order-one coefficients.
pub fn solve_integrated_operational(
    scenario: &Scenario,
    t: usize,
    cfg: &QpConfig,
) -> Result<IntegratedSolution> {
    let n = scenario.locations;
    let h = scenario.slot_hours;
    let coeffs = reduction_coeffs(scenario, t);
    // Variables: [workload energies 0..n, server energies n..2n].
    let nv = 2 * n;
    let mut quad = DMatrix::zeros(nv, nv);
    let mut lin = DVector::zeros(nv);
    let mut per_rate = Vec::with_capacity(n);
    let mut per_server = Vec::with_capacity(n);
    for i in 0..n {
        let dc = &scenario.data_centers[i];
        // MWh per unit request rate and per active server.
        per_rate.push((dc.p_peak_w - dc.p_idle_w) / dc.service_rate * h / 1e6);
        per_server.push((dc.p_idle_w + (dc.pue - 1.0) * dc.p_peak_w) * h / 1e6);
        let cap = scenario.grid.capacity_mw[i] * h;
        let offset = dc.base_overhead_mwh + scenario.grid.background_mwh[t][i];
        for a in 0..2 {
            for b in 0..2 {
                quad[(i + a * n, i + b * n)] += 2.0 / cap;
            }
            lin[i + a * n] += 2.0 * offset / cap;
        }
    }
    // Workload completion: the weighted workload energies must carry the
    // demand. Normalized by the mean weight to keep the row order one.
    let row_scale = (0..n).map(|i| 1.0 / per_rate[i]).sum::<f64>() / n as f64;
    let mut eq = DMatrix::zeros(1, nv);
    for i in 0..n {
        eq[(0, i)] = 1.0 / per_rate[i] / row_scale;
    }
    let eq_rhs = DVector::from_element(1, scenario.workload[t] / row_scale);

    // Rows: workload sign, server box, service margin, supply window.
    let m = 4 * n;
    let mut g = DMatrix::zeros(m, nv);
    let mut lo = DVector::zeros(m);
    let mut hi = DVector::zeros(m);
    for i in 0..n {
        let dc = &scenario.data_centers[i];
        g[(i, i)] = 1.0;
        lo[i] = 0.0;
        hi[i] = f64::INFINITY;
        g[(n + i, n + i)] = 1.0;
        lo[n + i] = 0.0;
        hi[n + i] = per_server[i] * dc.servers as f64;
        // service_rate * servers - workload >= slack, scaled by MWh/rate.
        g[(2 * n + i, i)] = -1.0;
        g[(2 * n + i, n + i)] = dc.service_rate * per_rate[i] / per_server[i];
        lo[2 * n + i] = coeffs.rate_slack[i] * per_rate[i];
        hi[2 * n + i] = f64::INFINITY;
        g[(3 * n + i, i)] = 1.0;
        g[(3 * n + i, n + i)] = 1.0;
        let supply = scenario.grid.capacity_mw[i] * h - scenario.grid.background_mwh[t][i];
        lo[3 * n + i] = -dc.base_overhead_mwh;
        hi[3 * n + i] = supply - dc.base_overhead_mwh;
    }
    let qp = QpProblem {
        quadratic: quad,
        linear: lin,
        eq_matrix: eq,
        eq_rhs,
        ineq_matrix: g,
        lower: lo,
        upper: hi,
    };
    let sol = qp_solve(&qp, cfg)?;
    match sol.status {
        QpStatus::Optimal => {}
        QpStatus::Infeasible => {
            return Err(Error::InfeasibleSlot("operational dispatch infeasible".into()))
        }
        QpStatus::MaxIterations => {
            return Err(Error::SolverFailure("operational dispatch did not converge".into()))
        }
    }
    let slot = model::reduce_to_energy_space(scenario, t)?;
    let energy: Vec<f64> = (0..n)
        .map(|i| sol.x[i] + sol.x[n + i] + scenario.data_centers[i].base_overhead_mwh)
        .collect();
    let eli = model::eli(&slot, &energy);
    Ok(IntegratedSolution { energy, eli })
}

/// Solves the restricted pricing problem: the unclamped response expression
/// becomes an equality and the energy box moves into the pricing stage,
/// giving a convex QP whose value upper-bounds the exact optimum.
pub fn solve_restricted(slot: &SlotProblem, cfg: &QpConfig) -> Result<RestrictedSolution> {
    slot.check_feasible()?;
    let n = slot.locations();
    // Variables: [references 0..n, energies n..2n, multiplier 2n]. The
    // multiplier is scaled by its mean weight to keep coefficients order one.
    let sigma_scale = slot.rate_per_mwh.iter().sum::<f64>() / n as f64;
    let nv = 2 * n + 1;
    let mut quad = DMatrix::zeros(nv, nv);
    let mut lin = DVector::zeros(nv);
    for i in 0..n {
        quad[(n + i, n + i)] = 2.0 / slot.capacity_mwh[i];
        lin[n + i] = 2.0 * slot.background_mwh[i] / slot.capacity_mwh[i];
    }
    let mut eq = DMatrix::zeros(n + 1, nv);
    let mut eq_rhs = DVector::zeros(n + 1);
    for i in 0..n {
        eq[(i, i)] = -0.5;
        eq[(i, n + i)] = 1.0;
        eq[(i, 2 * n)] = slot.rate_per_mwh[i] / (2.0 * slot.sensitivity[i]) / sigma_scale;
        eq_rhs[i] = -slot.base_price[i] / (2.0 * slot.sensitivity[i]);
    }
    for i in 0..n {
        eq[(n, n + i)] = slot.rate_per_mwh[i] / sigma_scale;
    }
    eq_rhs[n] = slot.energy_target / sigma_scale;

    let m = 2 * n + 1;
    let mut g = DMatrix::zeros(m, nv);
    let mut lo = DVector::zeros(m);
    let mut hi = DVector::zeros(m);
    for i in 0..n {
        // Price band on beta * (e - s).
        g[(i, i)] = -slot.sensitivity[i];
        g[(i, n + i)] = slot.sensitivity[i];
        lo[i] = slot.price_floor[i] - slot.base_price[i];
        hi[i] = slot.price_ceiling[i] - slot.base_price[i];
        // Energy box.
        g[(n + i, n + i)] = 1.0;
        lo[n + i] = slot.energy_lo[i];
        hi[n + i] = slot.energy_hi[i];
    }
    let mean_base: f64 = slot.base_price.iter().sum::<f64>() / n as f64;
    for i in 0..n {
        g[(2 * n, i)] = -slot.sensitivity[i] / n as f64;
        g[(2 * n, n + i)] = slot.sensitivity[i] / n as f64;
    }
    lo[2 * n] = f64::NEG_INFINITY;
    hi[2 * n] = slot.avg_price_cap - mean_base;

    let qp = QpProblem {
        quadratic: quad,
        linear: lin,
        eq_matrix: eq,
        eq_rhs,
        ineq_matrix: g,
        lower: lo,
        upper: hi,
    };
    let sol = qp_solve(&qp, cfg)?;
    match sol.status {
        QpStatus::Optimal => {}
        QpStatus::Infeasible => {
            return Err(Error::RestrictedInfeasible(
                "price constraints exclude every unclamped response".into(),
            ))
        }
        QpStatus::MaxIterations => {
            return Err(Error::SolverFailure("restricted problem did not converge".into()))
        }
    }
    let reference: Vec<f64> = sol.x.as_slice()[..n].to_vec();
    let energy: Vec<f64> = sol.x.as_slice()[n..2 * n].to_vec();
    let sigma = sol.x[2 * n] / sigma_scale;
    let eli = model::eli(slot, &energy);
    Ok(RestrictedSolution { reference, energy, sigma, eli })
}

/// Provider's cost-greedy response when charged plain base prices: fill the
/// cheapest locations (by price per unit of equality progress) to their
/// caps, lowest index first on ties.
pub fn solve_base_price(slot: &SlotProblem) -> Result<BasePriceSolution> {
    slot.check_feasible()?;
    let n = slot.locations();
    let mut energy = slot.energy_lo.clone();
    let mut residual = slot.energy_target
        - energy.iter().zip(&slot.rate_per_mwh).map(|(e, t)| e * t).sum::<f64>();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let ca = slot.base_price[a] / slot.rate_per_mwh[a];
        let cb = slot.base_price[b] / slot.rate_per_mwh[b];
        ca.partial_cmp(&cb).unwrap().then(a.cmp(&b))
    });
    for &i in &order {
        if residual <= 0.0 {
            break;
        }
        let room = slot.rate_per_mwh[i] * (slot.energy_hi[i] - energy[i]);
        let take = room.min(residual);
        energy[i] += take / slot.rate_per_mwh[i];
        residual -= take;
    }
    if residual > 1e-9 * slot.energy_target.abs().max(1.0) {
        return Err(Error::InfeasibleSlot(format!(
            "greedy fill left {residual} of the weighted target uncovered"
        )));
    }
    let eli = model::eli(slot, &energy);
    let cost = energy.iter().zip(&slot.base_price).map(|(e, a)| e * a).sum();
    Ok(BasePriceSolution { energy, eli, cost })
}
