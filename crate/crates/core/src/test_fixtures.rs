//! Small instances shared by the unit tests.

use crate::model::{DataCenterSpec, GridSpec, PricingPolicy, Scenario, SlotProblem};
use crate::numerics::bisect;

/// Symmetric two-location slot in unit-scale coordinates: weights one,
/// target 2, box `[0, 2]` per location, unit base prices and sensitivities,
/// and a wide price band.
pub fn two_location_slot() -> SlotProblem {
    SlotProblem {
        slot_hours: 1.0,
        rate_per_mwh: vec![1.0, 1.0],
        energy_target: 2.0,
        energy_lo: vec![0.0, 0.0],
        energy_hi: vec![2.0, 2.0],
        server_energy_cap: vec![2.0, 2.0],
        base_price: vec![1.0, 1.0],
        sensitivity: vec![1.0, 1.0],
        price_floor: vec![-10.0, -10.0],
        price_ceiling: vec![10.0, 10.0],
        avg_price_cap: 10.0,
        background_mwh: vec![0.0, 0.0],
        capacity_mwh: vec![1.0, 1.0],
    }
}

/// Two-location, two-slot scenario in physical units.
pub fn tiny_scenario() -> Scenario {
    let slots = 2;
    Scenario {
        name: "tiny".into(),
        slots,
        locations: 2,
        slot_hours: 1.0,
        data_centers: vec![
            DataCenterSpec {
                id: 0,
                servers: 10_000,
                service_rate: 4.0,
                p_idle_w: 100.0,
                p_peak_w: 200.0,
                pue: 1.5,
                base_overhead_mwh: 0.05,
            },
            DataCenterSpec {
                id: 1,
                servers: 10_000,
                service_rate: 3.0,
                p_idle_w: 100.0,
                p_peak_w: 200.0,
                pue: 1.2,
                base_overhead_mwh: 0.05,
            },
        ],
        grid: GridSpec {
            capacity_mw: vec![8.0, 8.0],
            background_mwh: vec![vec![2.0, 2.5]; slots],
        },
        pricing: PricingPolicy {
            base_price: vec![vec![30.0, 26.0]; slots],
            sensitivity: vec![1.0, 1.2],
            price_floor: vec![vec![5.0, 5.0]; slots],
            price_ceiling: vec![vec![90.0, 90.0]; slots],
            avg_price_cap: vec![60.0; slots],
        },
        workload: vec![20_000.0; slots],
        delay_bound_s: 0.5,
        transmission_delay_s: vec![vec![0.05, 0.08]; slots],
    }
}

/// Picks a feasible energy vector inside the slot's box meeting the
/// weighted-energy equality, spreading the surplus according to `weights`
/// (all positive).
pub fn feasible_energy(slot: &SlotProblem, weights: &[f64]) -> Vec<f64> {
    let n = slot.locations();
    assert_eq!(weights.len(), n);
    let point = |tau: f64| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let span = slot.energy_hi[i] - slot.energy_lo[i];
                (slot.energy_lo[i] + tau * weights[i] * span)
                    .clamp(slot.energy_lo[i], slot.energy_hi[i])
            })
            .collect()
    };
    let residual = |tau: f64| -> f64 {
        point(tau)
            .iter()
            .zip(&slot.rate_per_mwh)
            .map(|(e, th)| e * th)
            .sum::<f64>()
            - slot.energy_target
    };
    let root = bisect(residual, 0.0, 1.0, 1e-14).expect("slot feasible").root;
    point(root)
}
