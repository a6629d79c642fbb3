//! Property tests for the model invariants.

mod common;

use proptest::prelude::*;

use dcdr_core::model::{
    self, energy_of, recover_dispatch, reduce_to_energy_space, PricingDecision,
};
use dcdr_core::numerics::bisect;
use dcdr_core::scenario::fmt_f64;

/// Samples a feasible point of the slot's box/equality set by scaling a
/// weighted ray from the floor.
fn feasible_point(slot: &dcdr_core::SlotProblem, weights: &[f64]) -> Vec<f64> {
    let n = slot.locations();
    let point = |tau: f64| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let span = slot.energy_hi[i] - slot.energy_lo[i];
                (slot.energy_lo[i] + tau * weights[i] * span)
                    .clamp(slot.energy_lo[i], slot.energy_hi[i])
            })
            .collect()
    };
    let residual = |tau: f64| {
        point(tau)
            .iter()
            .zip(&slot.rate_per_mwh)
            .map(|(e, th)| e * th)
            .sum::<f64>()
            - slot.energy_target
    };
    let root = bisect(residual, 0.0, 1.0, 1e-14).expect("feasible slot").root;
    point(root)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Any feasible energy vector inverts to an operationally valid
    /// dispatch that maps back to the same energies.
    #[test]
    fn dispatch_round_trip(
        seed in 0u64..1_000,
        w0 in 0.05f64..1.0,
        w1 in 0.05f64..1.0,
        w2 in 0.05f64..1.0,
    ) {
        let mut rng = common::rng(seed);
        let scenario = common::random_scenario(&mut rng, 3);
        let slot = match reduce_to_energy_space(&scenario, 0) {
            Ok(slot) => slot,
            Err(_) => return Ok(()),
        };
        let energy = feasible_point(&slot, &[w0, w1, w2]);
        let dispatch = recover_dispatch(&slot, &scenario, 0, &energy).unwrap();
        dispatch.check(&scenario, 0).unwrap();
        for i in 0..3 {
            let back = energy_of(
                &scenario.data_centers[i],
                dispatch.active_servers[i],
                dispatch.workload[i],
                scenario.slot_hours,
            );
            prop_assert!((back - energy[i]).abs() <= 1e-9 * energy[i].abs().max(1.0));
        }
    }

    /// Stored decisions always reproduce the tiered-price identity.
    #[test]
    fn implied_prices_recompute_exactly(
        seed in 0u64..1_000,
        shift in -3.0f64..3.0,
    ) {
        let mut rng = common::rng(seed);
        let slot = common::random_slot(&mut rng, 3);
        let reference: Vec<f64> = slot.energy_hi.iter().map(|e| e + shift).collect();
        let energy = slot.energy_lo.clone();
        let decision = PricingDecision::new(&slot, &reference, &energy);
        for i in 0..3 {
            let expect =
                slot.base_price[i] + slot.sensitivity[i] * (energy[i] - reference[i]);
            prop_assert_eq!(decision.implied_price[i].to_bits(), expect.to_bits());
        }
    }

    /// The load index strictly grows when any location draws more.
    #[test]
    fn load_index_monotone(seed in 0u64..1_000, bump in 1e-6f64..0.1) {
        let mut rng = common::rng(seed);
        let slot = common::random_slot(&mut rng, 3);
        let energy = slot.energy_lo.clone();
        let base = model::eli(&slot, &energy);
        for i in 0..3 {
            let mut up = energy.clone();
            up[i] += bump;
            prop_assert!(model::eli(&slot, &up) > base);
        }
    }

    /// The 17-significant-digit float format round-trips every value bit
    /// for bit.
    #[test]
    fn float_format_round_trips(bits in any::<u64>()) {
        let x = f64::from_bits(bits);
        if x.is_finite() {
            let back: f64 = fmt_f64(x).parse().unwrap();
            prop_assert_eq!(back.to_bits(), x.to_bits());
        }
    }
}
