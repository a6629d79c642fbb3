//! Instance generators and independent oracles shared by the integration
//! tests. The oracles deliberately avoid the library's solution paths:
//! direct linear-system solves, grid scans, and exhaustive enumeration.
#![allow(dead_code)] // each test target uses its own subset

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use dcdr_core::model::{DataCenterSpec, GridSpec, PricingPolicy, Scenario, SlotProblem};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random unit-scale slot with a feasible box/equality pair and a price
/// band that is sometimes wide, sometimes binding.
pub fn random_slot(rng: &mut ChaCha8Rng, n: usize) -> SlotProblem {
    let lo: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.6)).collect();
    let hi: Vec<f64> = lo.iter().map(|l| l + rng.random_range(0.4..2.0)).collect();
    let theta: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    let wlo: f64 = theta.iter().zip(&lo).map(|(t, e)| t * e).sum();
    let whi: f64 = theta.iter().zip(&hi).map(|(t, e)| t * e).sum();
    let target = wlo + rng.random_range(0.1..0.9) * (whi - wlo);
    let base_price: Vec<f64> = (0..n).map(|_| rng.random_range(0.8..3.0)).collect();
    let mean_base = base_price.iter().sum::<f64>() / n as f64;
    let spread_lo = rng.random_range(0.5..4.0);
    let spread_hi = rng.random_range(0.5..4.0);
    let background: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
    let capacity: Vec<f64> = background
        .iter()
        .zip(&hi)
        .map(|(b, h)| b + h + rng.random_range(0.5..3.0))
        .collect();
    SlotProblem {
        slot_hours: 1.0,
        rate_per_mwh: theta,
        energy_target: target,
        energy_lo: lo,
        energy_hi: hi.clone(),
        server_energy_cap: hi,
        base_price,
        sensitivity: (0..n).map(|_| rng.random_range(0.5..2.0)).collect(),
        price_floor: vec![mean_base - spread_lo; n],
        price_ceiling: vec![mean_base + spread_hi; n],
        avg_price_cap: mean_base - spread_lo + rng.random_range(0.3..(spread_lo + spread_hi)),
        background_mwh: background,
        capacity_mwh: capacity,
    }
}

/// Random physically-scaled scenario with a single slot.
pub fn random_scenario(rng: &mut ChaCha8Rng, n: usize) -> Scenario {
    let data_centers: Vec<DataCenterSpec> = (0..n)
        .map(|i| {
            let p_idle = rng.random_range(60.0..140.0);
            DataCenterSpec {
                id: i,
                servers: rng.random_range(20_000..100_000),
                service_rate: rng.random_range(2.0..5.0),
                p_idle_w: p_idle,
                p_peak_w: p_idle + rng.random_range(50.0..160.0),
                pue: rng.random_range(1.1..1.8),
                base_overhead_mwh: rng.random_range(0.0..0.3),
            }
        })
        .collect();
    // Capacity comfortably above the server-side draw plus background.
    let server_mw: Vec<f64> = data_centers
        .iter()
        .map(|dc| dc.pue * dc.p_peak_w * dc.servers as f64 / 1e6)
        .collect();
    let background: Vec<f64> =
        server_mw.iter().map(|s| s * rng.random_range(0.4..1.2)).collect();
    let capacity: Vec<f64> = server_mw
        .iter()
        .zip(&background)
        .map(|(s, b)| s + b + rng.random_range(2.0..20.0))
        .collect();
    let total_rate: f64 =
        data_centers.iter().map(|dc| dc.service_rate * dc.servers as f64).sum();
    let workload = total_rate * rng.random_range(0.2..0.8);
    let base_price: Vec<f64> = (0..n).map(|_| rng.random_range(20.0..45.0)).collect();
    Scenario {
        name: "random".into(),
        slots: 1,
        locations: n,
        slot_hours: 1.0,
        data_centers,
        grid: GridSpec { capacity_mw: capacity, background_mwh: vec![background] },
        pricing: PricingPolicy {
            base_price: vec![base_price],
            sensitivity: (0..n).map(|_| rng.random_range(0.5..2.0)).collect(),
            price_floor: vec![vec![5.0; n]],
            price_ceiling: vec![vec![120.0; n]],
            avg_price_cap: vec![90.0],
        },
        workload: vec![workload],
        delay_bound_s: 0.5,
        transmission_delay_s: vec![(0..n).map(|_| rng.random_range(0.02..0.2)).collect()],
    }
}

/// Random convex QP with a known feasible point.
pub struct RandomQp {
    pub problem: dcdr_core::numerics::QpProblem,
    pub equality_only: bool,
}

pub fn random_qp(rng: &mut ChaCha8Rng, equality_only: bool) -> RandomQp {
    let n = rng.random_range(2..=30);
    let mut l_factor = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            l_factor[(i, j)] = rng.random_range(-1.0..1.0);
        }
        l_factor[(i, i)] += rng.random_range(0.5..1.5);
    }
    let quadratic = &l_factor * l_factor.transpose();
    let linear = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
    let x0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));

    let m_eq = rng.random_range(1..=(n / 2).max(1));
    let eq_matrix = DMatrix::from_fn(m_eq, n, |_, _| rng.random_range(-1.0..1.0));
    let eq_rhs = &eq_matrix * &x0;

    let (ineq_matrix, lower, upper) = if equality_only {
        (DMatrix::zeros(0, n), DVector::zeros(0), DVector::zeros(0))
    } else {
        let m_in = rng.random_range(1..=n);
        let g = DMatrix::from_fn(m_in, n, |_, _| rng.random_range(-1.0..1.0));
        let gx = &g * &x0;
        let lower = DVector::from_fn(m_in, |i, _| gx[i] - rng.random_range(0.05..2.0));
        let upper = DVector::from_fn(m_in, |i, _| gx[i] + rng.random_range(0.05..2.0));
        (g, lower, upper)
    };
    RandomQp {
        problem: dcdr_core::numerics::QpProblem {
            quadratic,
            linear,
            eq_matrix,
            eq_rhs,
            ineq_matrix,
            lower,
            upper,
        },
        equality_only,
    }
}

/// Direct dense solve of the optimality system of an equality-constrained
/// QP: `[P A'; A 0] [x; nu] = [-q; b]`.
pub fn kkt_oracle(problem: &dcdr_core::numerics::QpProblem) -> DVector<f64> {
    let n = problem.num_vars();
    let m = problem.eq_rhs.len();
    let mut kkt = DMatrix::zeros(n + m, n + m);
    for i in 0..n {
        for j in 0..n {
            kkt[(i, j)] = problem.quadratic[(i, j)];
        }
    }
    for i in 0..m {
        for j in 0..n {
            kkt[(n + i, j)] = problem.eq_matrix[(i, j)];
            kkt[(j, n + i)] = problem.eq_matrix[(i, j)];
        }
    }
    let mut rhs = DVector::zeros(n + m);
    for j in 0..n {
        rhs[j] = -problem.linear[j];
    }
    for i in 0..m {
        rhs[n + i] = problem.eq_rhs[i];
    }
    let sol = kkt.lu().solve(&rhs).expect("oracle system solvable");
    sol.rows(0, n).into_owned()
}

/// Exhaustive enumeration over every full switch assignment; each leaf is a
/// convex QP. Returns the best load index over feasible leaves.
pub fn exhaustive_stage1_oracle(slot: &SlotProblem) -> Option<f64> {
    use dcdr_core::bilevel::{solve_relaxation, BilevelMiqp, BnbNode};
    use dcdr_core::numerics::{QpConfig, QpStatus};
    let miqp = BilevelMiqp::build(slot).unwrap();
    let n = slot.locations();
    let cfg = QpConfig { tol: 1e-8, ..QpConfig::default() };
    let mut best: Option<f64> = None;
    for mask in 0..(1u32 << (2 * n)) {
        let node = BnbNode {
            fixed_lower: (0..n).map(|i| Some(mask & (1 << i) != 0)).collect(),
            fixed_upper: (0..n).map(|i| Some(mask & (1 << (n + i)) != 0)).collect(),
            parent_bound: f64::NEG_INFINITY,
            depth: (2 * n) as u32,
        };
        let sol = match solve_relaxation(&miqp, &node, &cfg, None) {
            Ok(sol) => sol,
            Err(_) => continue,
        };
        if sol.status != QpStatus::Optimal {
            continue;
        }
        let energy: Vec<f64> = (0..n).map(|i| sol.x[n + i]).collect();
        let value = dcdr_core::model::eli(slot, &energy);
        if best.is_none_or(|b| value < b) {
            best = Some(value);
        }
    }
    best
}

/// Brute-force two-location response: scan the one free coordinate on a
/// grid and keep the cheapest feasible pair.
pub fn grid_response_oracle(slot: &SlotProblem, reference: &[f64], step: f64) -> Option<Vec<f64>> {
    assert_eq!(slot.locations(), 2);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut e0 = slot.energy_lo[0];
    while e0 <= slot.energy_hi[0] + 1e-12 {
        let e1 = (slot.energy_target - slot.rate_per_mwh[0] * e0) / slot.rate_per_mwh[1];
        if e1 >= slot.energy_lo[1] - 1e-12 && e1 <= slot.energy_hi[1] + 1e-12 {
            let cost = dcdr_core::model::total_cost(slot, reference, &[e0, e1]);
            if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                best = Some((cost, vec![e0, e1]));
            }
        }
        e0 += step;
    }
    best.map(|(_, e)| e)
}
