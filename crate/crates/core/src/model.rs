//! Domain types, the physical energy model, the reduction of the dispatch
//! problem to energy space, and the evaluation formulas (price, cost, load
//! ratio, load index).
//!
//! Units: server powers are given in watts and converted internally;
//! energies are megawatt-hours per slot, substation capacities megawatts,
//! prices currency per megawatt-hour, workload requests per second.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WATTS_PER_MEGAWATT: f64 = 1e6;

/// Static physical parameters of one data center.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataCenterSpec {
    pub id: usize,
    /// Total number of servers.
    pub servers: u32,
    /// Service rate per server, requests/second.
    pub service_rate: f64,
    /// Average idle power of one server, watts.
    pub p_idle_w: f64,
    /// Average peak power of one server, watts.
    pub p_peak_w: f64,
    /// Power usage effectiveness, total facility energy over IT energy.
    pub pue: f64,
    /// Fixed per-slot overhead energy, MWh.
    pub base_overhead_mwh: f64,
}

impl DataCenterSpec {
    pub fn validate(&self, problems: &mut Vec<String>) {
        let id = self.id;
        if self.servers == 0 {
            problems.push(format!("data center {id}: server count must be positive"));
        }
        if !(self.service_rate > 0.0) {
            problems.push(format!("data center {id}: service rate must be positive"));
        }
        if !(self.p_idle_w > 0.0 && self.p_peak_w > self.p_idle_w) {
            problems.push(format!(
                "data center {id}: require p_peak > p_idle > 0 (got {} / {})",
                self.p_peak_w, self.p_idle_w
            ));
        }
        if !(self.pue > 1.0) {
            problems.push(format!("data center {id}: PUE must exceed 1 (got {})", self.pue));
        }
        if !(self.base_overhead_mwh >= 0.0) {
            problems.push(format!("data center {id}: base overhead must be nonnegative"));
        }
    }
}

/// Substation capacities and forecast background loads.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    /// Substation capacity per location, MW.
    pub capacity_mw: Vec<f64>,
    /// Background load per slot and location, MWh; indexed `[slot][location]`.
    pub background_mwh: Vec<Vec<f64>>,
}

/// Tiered-pricing parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PricingPolicy {
    /// Base price per slot and location, currency/MWh; indexed `[slot][location]`.
    pub base_price: Vec<Vec<f64>>,
    /// Price sensitivity per location, currency/MWh^2.
    pub sensitivity: Vec<f64>,
    /// Unit-price band per slot and location, currency/MWh.
    pub price_floor: Vec<Vec<f64>>,
    pub price_ceiling: Vec<Vec<f64>>,
    /// Cap on the across-location average unit price, per slot.
    pub avg_price_cap: Vec<f64>,
}

/// A full multi-slot problem instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub slots: usize,
    pub locations: usize,
    pub slot_hours: f64,
    pub data_centers: Vec<DataCenterSpec>,
    pub grid: GridSpec,
    pub pricing: PricingPolicy,
    /// Total incoming workload per slot, requests/second.
    pub workload: Vec<f64>,
    /// End-to-end delay bound, seconds.
    pub delay_bound_s: f64,
    /// Transmission delay per slot and location, seconds; `[slot][location]`.
    pub transmission_delay_s: Vec<Vec<f64>>,
}

impl Scenario {
    /// Checks every invariant and reports all violations with coordinates.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let n = self.locations;
        let t_count = self.slots;

        if self.data_centers.len() != n {
            problems.push(format!(
                "expected {n} data centers, found {}",
                self.data_centers.len()
            ));
        }
        if !(self.slot_hours > 0.0) {
            problems.push("slot length must be positive".into());
        }
        for dc in &self.data_centers {
            dc.validate(&mut problems);
        }

        let check_table = |name: &str, table: &Vec<Vec<f64>>, problems: &mut Vec<String>| {
            if table.len() != t_count {
                problems.push(format!("{name}: expected {t_count} slot rows, found {}", table.len()));
            }
            for (t, row) in table.iter().enumerate() {
                if row.len() != n {
                    problems.push(format!(
                        "{name}: slot {t} has {} locations, expected {n}",
                        row.len()
                    ));
                }
            }
        };
        check_table("background_load", &self.grid.background_mwh, &mut problems);
        check_table("base_price", &self.pricing.base_price, &mut problems);
        check_table("price_floor", &self.pricing.price_floor, &mut problems);
        check_table("price_ceiling", &self.pricing.price_ceiling, &mut problems);
        check_table("transmission_delay", &self.transmission_delay_s, &mut problems);
        if self.workload.len() != t_count {
            problems.push(format!(
                "workload: expected {t_count} slots, found {}",
                self.workload.len()
            ));
        }
        if self.pricing.sensitivity.len() != n {
            problems.push(format!(
                "sensitivity: expected {n} locations, found {}",
                self.pricing.sensitivity.len()
            ));
        }
        if self.grid.capacity_mw.len() != n {
            problems.push(format!(
                "capacity: expected {n} locations, found {}",
                self.grid.capacity_mw.len()
            ));
        }
        if self.pricing.avg_price_cap.len() != t_count {
            problems.push(format!(
                "avg_price_cap: expected {t_count} slots, found {}",
                self.pricing.avg_price_cap.len()
            ));
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }

        for (i, &c) in self.grid.capacity_mw.iter().enumerate() {
            if !(c > 0.0) {
                problems.push(format!("capacity: location {i} must be positive (got {c})"));
            }
        }
        for (i, &b) in self.pricing.sensitivity.iter().enumerate() {
            if !(b > 0.0) {
                problems.push(format!("sensitivity: location {i} must be positive (got {b})"));
            }
        }
        for t in 0..t_count {
            if !(self.workload[t] >= 0.0) {
                problems.push(format!("workload: slot {t} is negative"));
            }
            let mut floor_sum = 0.0;
            for i in 0..n {
                let b = self.grid.background_mwh[t][i];
                let cap = self.grid.capacity_mw[i] * self.slot_hours;
                if !(0.0 <= b && b <= cap) {
                    problems.push(format!(
                        "background_load: slot {t}, location {i}: {b} outside [0, {cap}]"
                    ));
                }
                if !(self.pricing.base_price[t][i] > 0.0) {
                    problems.push(format!("base_price: slot {t}, location {i} must be positive"));
                }
                if self.pricing.price_floor[t][i] > self.pricing.price_ceiling[t][i] {
                    problems.push(format!(
                        "price band: slot {t}, location {i}: floor {} exceeds ceiling {}",
                        self.pricing.price_floor[t][i], self.pricing.price_ceiling[t][i]
                    ));
                }
                if self.transmission_delay_s[t][i] >= self.delay_bound_s {
                    problems.push(format!(
                        "transmission_delay: slot {t}, location {i}: delay {} reaches the \
                         bound {}; the service constraint is unsatisfiable",
                        self.transmission_delay_s[t][i], self.delay_bound_s
                    ));
                }
                floor_sum += self.pricing.price_floor[t][i];
            }
            if self.pricing.avg_price_cap[t] < floor_sum / n as f64 {
                problems.push(format!(
                    "avg_price_cap: slot {t}: cap {} is below the mean price floor {}",
                    self.pricing.avg_price_cap[t],
                    floor_sum / n as f64
                ));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }
}

/// One slot's dispatch problem reduced to energy space: choose energies in a
/// box whose weighted sum must meet a target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotProblem {
    pub slot_hours: f64,
    /// Request rate supported per MWh at each location (weights of the
    /// energy equality).
    pub rate_per_mwh: Vec<f64>,
    /// Weighted-energy target: the slot workload plus the service-floor terms.
    pub energy_target: f64,
    /// Per-location energy box, MWh.
    pub energy_lo: Vec<f64>,
    pub energy_hi: Vec<f64>,
    /// Upper energy bound from servers and the delay requirement alone,
    /// before the supply cap is applied.
    pub server_energy_cap: Vec<f64>,
    pub base_price: Vec<f64>,
    pub sensitivity: Vec<f64>,
    pub price_floor: Vec<f64>,
    pub price_ceiling: Vec<f64>,
    pub avg_price_cap: f64,
    /// Background load, MWh.
    pub background_mwh: Vec<f64>,
    /// Substation capacity expressed per slot, MWh.
    pub capacity_mwh: Vec<f64>,
}

impl SlotProblem {
    pub fn locations(&self) -> usize {
        self.rate_per_mwh.len()
    }

    /// Box/equality consistency: the weighted box must be able to hit the
    /// target.
    pub fn check_feasible(&self) -> Result<()> {
        for i in 0..self.locations() {
            if self.energy_hi[i] < self.energy_lo[i] {
                return Err(Error::InfeasibleSlot(format!(
                    "location {i}: supply cap {} below the idle service floor {}",
                    self.energy_hi[i], self.energy_lo[i]
                )));
            }
            if self.energy_lo[i] < 0.0 {
                return Err(Error::InfeasibleSlot(format!(
                    "location {i}: negative energy floor {}",
                    self.energy_lo[i]
                )));
            }
        }
        let lo: f64 = weighted_sum(&self.rate_per_mwh, &self.energy_lo);
        let hi: f64 = weighted_sum(&self.rate_per_mwh, &self.energy_hi);
        let slack = 1e-9 * self.energy_target.abs().max(1.0);
        if lo > self.energy_target + slack {
            return Err(Error::InfeasibleSlot(format!(
                "weighted floor {lo} exceeds target {}",
                self.energy_target
            )));
        }
        if hi < self.energy_target - slack {
            return Err(Error::InfeasibleSlot(format!(
                "weighted ceiling {hi} below target {}",
                self.energy_target
            )));
        }
        Ok(())
    }
}

/// The utility's per-location billing references together with the unit
/// prices they induce against a given response.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PricingDecision {
    /// Billing reference, MWh.
    pub reference_mwh: Vec<f64>,
    /// Induced unit price, currency/MWh.
    pub implied_price: Vec<f64>,
}

impl PricingDecision {
    pub fn new(slot: &SlotProblem, reference: &[f64], energy: &[f64]) -> Self {
        Self {
            reference_mwh: reference.to_vec(),
            implied_price: implied_prices(slot, reference, energy),
        }
    }
}

/// Unit prices induced by a reference/response pair.
pub fn implied_prices(slot: &SlotProblem, reference: &[f64], energy: &[f64]) -> Vec<f64> {
    (0..slot.locations())
        .map(|i| slot.base_price[i] + slot.sensitivity[i] * (energy[i] - reference[i]))
        .collect()
}

/// The provider's response in operational terms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DispatchDecision {
    /// Energy per location, MWh.
    pub energy_mwh: Vec<f64>,
    /// Workload per location, requests/second.
    pub workload: Vec<f64>,
    /// Fractional active server count per location.
    pub active_servers: Vec<f64>,
}

impl DispatchDecision {
    /// Checks the operational constraints against a scenario slot.
    pub fn check(&self, scenario: &Scenario, t: usize) -> Result<()> {
        let total: f64 = self.workload.iter().sum();
        let demand = scenario.workload[t];
        if (total - demand).abs() > 1e-8 * demand.abs().max(1.0) {
            return Err(Error::Precondition(format!(
                "assigned workload {total} does not meet demand {demand}"
            )));
        }
        for i in 0..scenario.locations {
            let dc = &scenario.data_centers[i];
            let lam = self.workload[i];
            let x = self.active_servers[i];
            if lam < 0.0 {
                return Err(Error::Precondition(format!("location {i}: negative workload")));
            }
            if !(0.0 <= x && x <= dc.servers as f64 + 1e-9) {
                return Err(Error::Precondition(format!(
                    "location {i}: active servers {x} outside [0, {}]",
                    dc.servers
                )));
            }
            let slack_needed = 1.0 / (scenario.delay_bound_s - scenario.transmission_delay_s[t][i]);
            if dc.service_rate * x - lam < slack_needed - 1e-9 {
                return Err(Error::Precondition(format!(
                    "location {i}: service margin {} below the delay requirement {slack_needed}",
                    dc.service_rate * x - lam
                )));
            }
            let e = self.energy_mwh[i];
            let supply = scenario.grid.capacity_mw[i] * scenario.slot_hours
                - scenario.grid.background_mwh[t][i];
            if !(-1e-9 <= e && e <= supply + 1e-9) {
                return Err(Error::Precondition(format!(
                    "location {i}: energy {e} outside available supply [0, {supply}]"
                )));
            }
        }
        Ok(())
    }
}

/// Solver identity attached to a [`SolveReport`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Integrated,
    Restricted,
    Exact,
    Heuristic,
    Robust,
    BasePrice,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Integrated,
        Method::Restricted,
        Method::Exact,
        Method::Heuristic,
        Method::Robust,
        Method::BasePrice,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Integrated => "integrated",
            Method::Restricted => "restricted",
            Method::Exact => "exact",
            Method::Heuristic => "heuristic",
            Method::Robust => "robust",
            Method::BasePrice => "base-price",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown method `{s}`")))
    }
}

/// Per-slot solver diagnostics.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub nodes: u64,
    pub iterations: u64,
    pub max_kkt_residual: f64,
}

/// Outcome of solving one slot with one method.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: Method,
    pub eli: f64,
    pub total_cost: f64,
    /// Load-index bounds bracketing the exact two-stage optimum, when the
    /// method computes them.
    pub lower_bound: Option<f64>,
    pub upper_bound: Option<f64>,
    pub diagnostics: Diagnostics,
    pub energy: Vec<f64>,
    pub reference: Option<Vec<f64>>,
}

fn weighted_sum(w: &[f64], v: &[f64]) -> f64 {
    w.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Per-location reduction coefficients for one slot: energy is affine in the
/// assigned request rate once the delay constraint is tight.
#[derive(Debug, Clone)]
pub struct ReductionCoeffs {
    /// MWh consumed per unit request rate.
    pub mwh_per_rate: Vec<f64>,
    /// Energy floor at zero workload (service slack plus overhead), MWh.
    pub floor_mwh: Vec<f64>,
    /// Required service-rate margin from the delay bound, requests/second.
    pub rate_slack: Vec<f64>,
}

/// Computes the affine coefficients tying energy to assigned workload.
pub fn reduction_coeffs(scenario: &Scenario, t: usize) -> ReductionCoeffs {
    let h = scenario.slot_hours;
    let n = scenario.locations;
    let mut mwh_per_rate = Vec::with_capacity(n);
    let mut floor_mwh = Vec::with_capacity(n);
    let mut rate_slack = Vec::with_capacity(n);
    for i in 0..n {
        let dc = &scenario.data_centers[i];
        let k = 1.0 / (scenario.delay_bound_s - scenario.transmission_delay_s[t][i]);
        let per_server_w = dc.p_idle_w + (dc.pue - 1.0) * dc.p_peak_w;
        let a = dc.pue * dc.p_peak_w / dc.service_rate * h / WATTS_PER_MEGAWATT;
        let b = per_server_w * k / dc.service_rate * h / WATTS_PER_MEGAWATT
            + dc.base_overhead_mwh;
        mwh_per_rate.push(a);
        floor_mwh.push(b);
        rate_slack.push(k);
    }
    ReductionCoeffs { mwh_per_rate, floor_mwh, rate_slack }
}

/// Energy drawn by one data center running `active_servers` servers on
/// `workload` requests/second for one slot, MWh.
pub fn energy_of(
    spec: &DataCenterSpec,
    active_servers: f64,
    workload: f64,
    slot_hours: f64,
) -> f64 {
    debug_assert!(active_servers >= 0.0 && workload >= 0.0);
    let watts = (spec.p_idle_w + (spec.pue - 1.0) * spec.p_peak_w) * active_servers
        + (spec.p_peak_w - spec.p_idle_w) / spec.service_rate * workload;
    watts * slot_hours / WATTS_PER_MEGAWATT + spec.base_overhead_mwh
}

/// Reduces one slot's dispatch problem to energy space.
///
/// At any cost-minimizing dispatch the delay constraint is tight, so energy
/// is affine in assigned workload; the workload-completion constraint then
/// becomes a weighted-energy equality over a box.
pub fn reduce_to_energy_space(scenario: &Scenario, t: usize) -> Result<SlotProblem> {
    if t >= scenario.slots {
        return Err(Error::Precondition(format!("slot {t} out of range")));
    }
    let n = scenario.locations;
    let h = scenario.slot_hours;
    let coeffs = reduction_coeffs(scenario, t);

    let mut rate_per_mwh = Vec::with_capacity(n);
    let mut energy_lo = Vec::with_capacity(n);
    let mut energy_hi = Vec::with_capacity(n);
    let mut server_energy_cap = Vec::with_capacity(n);
    let mut target = scenario.workload[t];
    for i in 0..n {
        let dc = &scenario.data_centers[i];
        let a = coeffs.mwh_per_rate[i];
        let b = coeffs.floor_mwh[i];
        let k = coeffs.rate_slack[i];
        let supply = scenario.grid.capacity_mw[i] * h - scenario.grid.background_mwh[t][i];
        let server_cap = a * (dc.service_rate * dc.servers as f64 - k) + b;
        rate_per_mwh.push(1.0 / a);
        energy_lo.push(b);
        server_energy_cap.push(server_cap);
        energy_hi.push(server_cap.min(supply));
        target += b / a;
    }

    let slot = SlotProblem {
        slot_hours: h,
        rate_per_mwh,
        energy_target: target,
        energy_lo,
        energy_hi,
        server_energy_cap,
        base_price: scenario.pricing.base_price[t].clone(),
        sensitivity: scenario.pricing.sensitivity.clone(),
        price_floor: scenario.pricing.price_floor[t].clone(),
        price_ceiling: scenario.pricing.price_ceiling[t].clone(),
        avg_price_cap: scenario.pricing.avg_price_cap[t],
        background_mwh: scenario.grid.background_mwh[t].clone(),
        capacity_mwh: scenario.grid.capacity_mw.iter().map(|c| c * h).collect(),
    };
    slot.check_feasible()?;
    Ok(slot)
}

/// Inverts an energy vector back to workload and server counts, using the
/// minimal (delay-tight) server allocation.
pub fn recover_dispatch(
    slot: &SlotProblem,
    scenario: &Scenario,
    t: usize,
    energy: &[f64],
) -> Result<DispatchDecision> {
    let n = slot.locations();
    if energy.len() != n {
        return Err(Error::Precondition(format!(
            "energy vector has {} entries, expected {n}",
            energy.len()
        )));
    }
    for i in 0..n {
        if energy[i] < slot.energy_lo[i] - 1e-9 || energy[i] > slot.energy_hi[i] + 1e-9 {
            return Err(Error::Precondition(format!(
                "location {i}: energy {} outside box [{}, {}]",
                energy[i], slot.energy_lo[i], slot.energy_hi[i]
            )));
        }
    }
    let weighted = weighted_sum(&slot.rate_per_mwh, energy);
    if (weighted - slot.energy_target).abs() > 1e-8 * slot.energy_target.abs().max(1.0) {
        return Err(Error::Precondition(format!(
            "weighted energy {weighted} misses target {}",
            slot.energy_target
        )));
    }

    let coeffs = reduction_coeffs(scenario, t);
    let mut workload = Vec::with_capacity(n);
    let mut active_servers = Vec::with_capacity(n);
    for i in 0..n {
        let lam = ((energy[i] - coeffs.floor_mwh[i]) * slot.rate_per_mwh[i]).max(0.0);
        let x = (lam + coeffs.rate_slack[i]) / scenario.data_centers[i].service_rate;
        workload.push(lam);
        active_servers.push(x);
    }
    Ok(DispatchDecision {
        energy_mwh: energy.to_vec(),
        workload,
        active_servers,
    })
}

/// Electric load index: capacity-weighted sum of squared load ratios.
pub fn eli(slot: &SlotProblem, energy: &[f64]) -> f64 {
    eli_with_background(slot, energy, &slot.background_mwh)
}

/// Load index against an explicit background vector (used when replaying
/// forecast errors).
pub fn eli_with_background(slot: &SlotProblem, energy: &[f64], background: &[f64]) -> f64 {
    (0..slot.locations())
        .map(|i| {
            let ratio = (energy[i] + background[i]) / slot.capacity_mwh[i];
            ratio * ratio * slot.capacity_mwh[i]
        })
        .sum()
}

/// Per-location load ratios for a response.
pub fn load_ratios(slot: &SlotProblem, energy: &[f64]) -> Vec<f64> {
    (0..slot.locations())
        .map(|i| (energy[i] + slot.background_mwh[i]) / slot.capacity_mwh[i])
        .collect()
}

/// Provider's total energy cost under tiered pricing.
pub fn total_cost(slot: &SlotProblem, reference: &[f64], energy: &[f64]) -> f64 {
    (0..slot.locations())
        .map(|i| {
            (slot.base_price[i] + slot.sensitivity[i] * (energy[i] - reference[i])) * energy[i]
        })
        .sum()
}

/// Violation of the price band and average-price cap for a reference and
/// the response it induced. Zero when fully feasible.
pub fn price_violation(slot: &SlotProblem, reference: &[f64], energy: &[f64]) -> f64 {
    let prices = implied_prices(slot, reference, energy);
    let n = slot.locations();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        worst = worst.max(slot.price_floor[i] - prices[i]);
        worst = worst.max(prices[i] - slot.price_ceiling[i]);
    }
    let avg = prices.iter().sum::<f64>() / n as f64;
    worst.max(avg - slot.avg_price_cap).max(0.0)
}
