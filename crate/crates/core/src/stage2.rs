//! The provider's cost-minimizing energy response to announced billing
//! references, in closed form up to a scalar balance multiplier.
//!
//! The response problem is strictly convex, so the optimum is the clamped
//! affine expression `e_i = clamp(s_i/2 - (alpha_i + theta_i*sigma) /
//! (2*beta_i))` with `sigma` chosen so the weighted energies meet the slot
//! target. The residual of that equality is continuous and nonincreasing in
//! `sigma`, which makes bisection exact enough; the final multiplier is then
//! re-solved in closed form on the unclamped set so the equality holds to
//! machine precision.

use crate::error::Result;
use crate::model::SlotProblem;
use crate::numerics::{bisect, bisect_boundary};

/// Optimal response with its optimality certificate: the balance multiplier
/// and the box multipliers.
#[derive(Debug, Clone)]
pub struct BestResponse {
    pub energy: Vec<f64>,
    /// Multiplier of the weighted-energy equality.
    pub sigma: f64,
    /// Multipliers of the lower box bounds, nonnegative.
    pub omega_lo: Vec<f64>,
    /// Multipliers of the upper box bounds, nonnegative.
    pub omega_hi: Vec<f64>,
}

/// Unclamped response expression at a given multiplier.
fn unclamped(slot: &SlotProblem, reference: &[f64], sigma: f64, i: usize) -> f64 {
    reference[i] / 2.0
        - (slot.base_price[i] + slot.rate_per_mwh[i] * sigma) / (2.0 * slot.sensitivity[i])
}

/// Weighted-energy surplus of the clamped response at `sigma`; nonincreasing.
pub(crate) fn balance_residual(slot: &SlotProblem, reference: &[f64], sigma: f64) -> f64 {
    (0..slot.locations())
        .map(|i| {
            slot.rate_per_mwh[i]
                * unclamped(slot, reference, sigma, i).clamp(slot.energy_lo[i], slot.energy_hi[i])
        })
        .sum::<f64>()
        - slot.energy_target
}

/// Multiplier at which location `i`'s unclamped response crosses `energy`.
fn crossing(slot: &SlotProblem, reference: &[f64], i: usize, energy: f64) -> f64 {
    (slot.sensitivity[i] * reference[i] - slot.base_price[i]
        - 2.0 * slot.sensitivity[i] * energy)
        / slot.rate_per_mwh[i]
}

/// Computes the provider's unique optimal response to `reference`.
pub fn best_response(slot: &SlotProblem, reference: &[f64]) -> Result<BestResponse> {
    slot.check_feasible()?;
    let n = slot.locations();
    debug_assert_eq!(reference.len(), n);

    // Seed bracket from the multipliers at which each component saturates.
    let mut seed_lo = f64::INFINITY;
    let mut seed_hi = f64::NEG_INFINITY;
    for i in 0..n {
        seed_lo = seed_lo.min(crossing(slot, reference, i, slot.energy_hi[i]));
        seed_hi = seed_hi.max(crossing(slot, reference, i, slot.energy_lo[i]));
    }
    let g = |sigma: f64| balance_residual(slot, reference, sigma);
    let root = bisect(g, seed_lo, seed_hi, 1e-10)?.root;

    // Re-solve the multiplier exactly on the set the root leaves unclamped,
    // re-deriving the clamp pattern until it is self-consistent. Near a
    // breakpoint the first pattern guess can be off by one component.
    let pattern_at = |sigma: f64| -> Vec<i8> {
        (0..n)
            .map(|i| {
                let u = unclamped(slot, reference, sigma, i);
                if u < slot.energy_lo[i] {
                    -1
                } else if u > slot.energy_hi[i] {
                    1
                } else {
                    0
                }
            })
            .collect()
    };
    let exact_for = |pattern: &[i8]| -> Option<f64> {
        let mut num = -slot.energy_target;
        let mut den = 0.0;
        for i in 0..n {
            let th = slot.rate_per_mwh[i];
            match pattern[i] {
                -1 => num += th * slot.energy_lo[i],
                1 => num += th * slot.energy_hi[i],
                _ => {
                    num += th
                        * (reference[i] / 2.0
                            - slot.base_price[i] / (2.0 * slot.sensitivity[i]));
                    den += th * th / (2.0 * slot.sensitivity[i]);
                }
            }
        }
        (den > 0.0).then(|| num / den)
    };

    let mut pattern = pattern_at(root);
    let mut sigma = root;
    if pattern.iter().all(|&p| p != 0) {
        // Fully clamped: the multiplier is an interval; report its midpoint.
        sigma = flat_interval_midpoint(&g, root);
    } else {
        for _ in 0..3 {
            let Some(exact) = exact_for(&pattern) else { break };
            let refined = pattern_at(exact);
            if refined == pattern {
                sigma = exact;
                break;
            }
            if refined.iter().all(|&p| p != 0) {
                break;
            }
            pattern = refined;
        }
    }

    let energy: Vec<f64> = (0..n)
        .map(|i| unclamped(slot, reference, sigma, i).clamp(slot.energy_lo[i], slot.energy_hi[i]))
        .collect();

    // Back-fill the box multipliers from stationarity.
    let mut omega_lo = vec![0.0; n];
    let mut omega_hi = vec![0.0; n];
    for i in 0..n {
        let resid = stationarity_term(slot, reference, sigma, energy[i], i);
        if energy[i] == slot.energy_lo[i] && energy[i] < slot.energy_hi[i] {
            omega_lo[i] = resid.max(0.0);
        } else if energy[i] == slot.energy_hi[i] && energy[i] > slot.energy_lo[i] {
            omega_hi[i] = (-resid).max(0.0);
        } else if slot.energy_lo[i] == slot.energy_hi[i] {
            // Pinned component: either side may carry the multiplier.
            if resid >= 0.0 {
                omega_lo[i] = resid;
            } else {
                omega_hi[i] = -resid;
            }
        }
    }

    Ok(BestResponse { energy, sigma, omega_lo, omega_hi })
}

fn flat_interval_midpoint<G: Fn(f64) -> f64>(g: &G, root: f64) -> f64 {
    let step0 = root.abs().max(1.0) * 1e-6;
    let mut lo_anchor = root;
    let mut step = step0;
    for _ in 0..60 {
        lo_anchor = root - step;
        if g(lo_anchor) > 0.0 {
            break;
        }
        step *= 2.0;
    }
    let mut hi_anchor = root;
    step = step0;
    for _ in 0..60 {
        hi_anchor = root + step;
        if g(hi_anchor) < 0.0 {
            break;
        }
        step *= 2.0;
    }
    let left = bisect_boundary(|s| g(s) > 0.0, lo_anchor, root, 1e-12);
    let right = bisect_boundary(|s| g(s) >= 0.0, root, hi_anchor, 1e-12);
    0.5 * (left + right)
}

fn stationarity_term(
    slot: &SlotProblem,
    reference: &[f64],
    sigma: f64,
    energy: f64,
    i: usize,
) -> f64 {
    slot.base_price[i] + 2.0 * slot.sensitivity[i] * energy
        - slot.sensitivity[i] * reference[i]
        + slot.rate_per_mwh[i] * sigma
}

/// Response of the equality-only relaxation: the box is ignored, so the
/// multiplier has a closed form and the energies come straight from the
/// unclamped expression.
pub fn unconstrained_response(slot: &SlotProblem, reference: &[f64]) -> BestResponse {
    let n = slot.locations();
    let mut num = -slot.energy_target;
    let mut den = 0.0;
    for i in 0..n {
        let th = slot.rate_per_mwh[i];
        num += th * (reference[i] / 2.0 - slot.base_price[i] / (2.0 * slot.sensitivity[i]));
        den += th * th / (2.0 * slot.sensitivity[i]);
    }
    let sigma = num / den;
    let energy = (0..n).map(|i| unclamped(slot, reference, sigma, i)).collect();
    BestResponse { energy, sigma, omega_lo: vec![0.0; n], omega_hi: vec![0.0; n] }
}

/// Worst violation of the response optimality system: stationarity, primal
/// and dual feasibility, and complementary slackness. The equality residual
/// is normalized by the target magnitude.
pub fn kkt_residual(slot: &SlotProblem, reference: &[f64], response: &BestResponse) -> f64 {
    let n = slot.locations();
    let mut worst: f64 = 0.0;
    let mut weighted = 0.0;
    for i in 0..n {
        let e = response.energy[i];
        weighted += slot.rate_per_mwh[i] * e;
        let stat = stationarity_term(slot, reference, response.sigma, e, i)
            - response.omega_lo[i]
            + response.omega_hi[i];
        worst = worst.max(stat.abs());
        worst = worst.max(slot.energy_lo[i] - e).max(e - slot.energy_hi[i]);
        worst = worst.max(-response.omega_lo[i]).max(-response.omega_hi[i]);
        worst = worst.max((response.omega_lo[i] * (e - slot.energy_lo[i])).abs());
        worst = worst.max((response.omega_hi[i] * (slot.energy_hi[i] - e)).abs());
    }
    let eq = (weighted - slot.energy_target).abs() / slot.energy_target.abs().max(1.0);
    worst.max(eq)
}
