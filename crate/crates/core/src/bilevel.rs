//! Exact pricing solver.
//!
//! The two-stage problem collapses to a single level by imposing the
//! provider's response-optimality system as constraints. The two
//! complementarity products are linearized with switched big-M rows driven
//! by one binary pair per location, and a best-first branch-and-bound over
//! those switches finds the global optimum, initialized with the integrated
//! lower bound and the restricted upper bound. Every incumbent is replayed
//! through the actual best-response map before it is trusted; a failed
//! replay or a multiplier crowding the linearization constant triggers a
//! constant escalation and a re-solve.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{DMatrix, DVector};

use crate::benchmarks::{solve_integrated, solve_restricted};
use crate::error::{Error, Result};
use crate::model::{self, SlotProblem};
use crate::numerics::{qp_solve_hinted, QpConfig, QpProblem, QpSolution, QpStatus};
use crate::stage2::{best_response, unconstrained_response};

/// Single-level mixed-integer quadratic form of one slot's pricing problem.
///
/// Variables per location: reference, energy, lower/upper box multipliers
/// and their switch gates, plus one shared balance multiplier. A gate is
/// the binary switch scaled by the linearization constant (`0` closed,
/// `big_m` open) so every constraint coefficient stays order one.
#[derive(Debug, Clone)]
pub struct BilevelMiqp {
    pub slot: SlotProblem,
    /// Linearization constant; must dominate both box gaps and the box
    /// multipliers attainable at any optimum.
    pub big_m: f64,
    /// The balance multiplier enters the system scaled by this (its mean
    /// weight), keeping every coefficient order one.
    sigma_scale: f64,
}

/// One search node: a partial assignment of the binary switches.
#[derive(Debug, Clone)]
pub struct BnbNode {
    /// Fixed lower-bound switches; `None` while relaxed.
    pub fixed_lower: Vec<Option<bool>>,
    /// Fixed upper-bound switches.
    pub fixed_upper: Vec<Option<bool>>,
    /// Relaxation value of the parent, used for monotonicity diagnostics.
    pub parent_bound: f64,
    pub depth: u32,
}

#[derive(Debug, Clone)]
pub struct BnbConfig {
    /// Absolute load-index gap at which the search stops.
    pub gap: f64,
    pub qp: QpConfig,
    pub max_nodes: u64,
    /// Times the linearization constant may be enlarged tenfold.
    pub max_escalations: u32,
    /// Replay tolerance for accepting incumbents and the final solution.
    pub verify_tol: f64,
    /// Record per-node bounds for diagnostics.
    pub record_nodes: bool,
}

impl Default for BnbConfig {
    fn default() -> Self {
        Self {
            gap: 1e-6,
            qp: QpConfig { tol: 1e-8, ..QpConfig::default() },
            max_nodes: 1_000_000,
            max_escalations: 3,
            verify_tol: 1e-6,
            record_nodes: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NodeRecord {
    pub depth: u32,
    pub parent_bound: f64,
    pub bound: f64,
    pub incumbent: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct BnbDiagnostics {
    /// Relaxations solved across all escalation rounds.
    pub nodes: u64,
    pub escalations: u32,
    pub big_m: f64,
    /// Replay violation of the returned solution.
    pub max_violation: f64,
    /// Incumbent candidates whose replay disagreed with the relaxation.
    pub rejected_candidates: u64,
    pub node_log: Vec<NodeRecord>,
}

/// Globally optimal pricing decision for one slot.
#[derive(Debug, Clone)]
pub struct ExactSolution {
    pub reference: Vec<f64>,
    pub energy: Vec<f64>,
    pub sigma: f64,
    pub eli: f64,
    /// Integrated lower bound on the load index.
    pub lower_bound: f64,
    /// Restricted upper bound, when the restricted problem is feasible.
    pub upper_bound: Option<f64>,
    pub diagnostics: BnbDiagnostics,
}

impl BilevelMiqp {
    pub fn build(slot: &SlotProblem) -> Result<Self> {
        slot.check_feasible()?;
        Ok(Self {
            slot: slot.clone(),
            big_m: default_big_m(slot),
            sigma_scale: mean_weight(slot),
        })
    }

    /// Builds with an explicit linearization constant.
    pub fn with_big_m(slot: &SlotProblem, big_m: f64) -> Result<Self> {
        slot.check_feasible()?;
        Ok(Self { slot: slot.clone(), big_m, sigma_scale: mean_weight(slot) })
    }

    /// Balance multiplier encoded in the relaxation's variable vector.
    pub fn sigma_of(&self, x: &DVector<f64>) -> f64 {
        x[self.idx_sigma()] / self.sigma_scale
    }

    pub fn root(&self) -> BnbNode {
        let n = self.slot.locations();
        let mut node = BnbNode {
            fixed_lower: vec![None; n],
            fixed_upper: vec![None; n],
            parent_bound: f64::NEG_INFINITY,
            depth: 0,
        };
        // A pinned component sits at both box bounds at once; both switches
        // collapse to zero and its multipliers stay free.
        for i in 0..n {
            if self.slot.energy_hi[i] - self.slot.energy_lo[i] <= 1e-12 {
                node.fixed_lower[i] = Some(false);
                node.fixed_upper[i] = Some(false);
            }
        }
        node
    }

    fn num_vars(&self) -> usize {
        6 * self.slot.locations() + 1
    }

    fn idx_ref(&self, i: usize) -> usize {
        i
    }
    fn idx_energy(&self, i: usize) -> usize {
        self.slot.locations() + i
    }
    fn idx_sigma(&self) -> usize {
        2 * self.slot.locations()
    }
    fn idx_omega_lo(&self, i: usize) -> usize {
        2 * self.slot.locations() + 1 + i
    }
    fn idx_omega_hi(&self, i: usize) -> usize {
        3 * self.slot.locations() + 1 + i
    }
    fn idx_switch_lo(&self, i: usize) -> usize {
        4 * self.slot.locations() + 1 + i
    }
    fn idx_switch_hi(&self, i: usize) -> usize {
        5 * self.slot.locations() + 1 + i
    }

    /// Assembles the node's continuous relaxation.
    pub fn relaxation_qp(&self, node: &BnbNode) -> QpProblem {
        let slot = &self.slot;
        let n = slot.locations();
        let nv = self.num_vars();
        let k = self.big_m;

        let mut quad = DMatrix::zeros(nv, nv);
        let mut lin = DVector::zeros(nv);
        for i in 0..n {
            quad[(self.idx_energy(i), self.idx_energy(i))] = 2.0 / slot.capacity_mwh[i];
            lin[self.idx_energy(i)] = 2.0 * slot.background_mwh[i] / slot.capacity_mwh[i];
        }

        // Stationarity rows plus the weighted-energy equality.
        let mut eq = DMatrix::zeros(n + 1, nv);
        let mut eq_rhs = DVector::zeros(n + 1);
        for i in 0..n {
            eq[(i, self.idx_ref(i))] = -slot.sensitivity[i];
            eq[(i, self.idx_energy(i))] = 2.0 * slot.sensitivity[i];
            eq[(i, self.idx_sigma())] = slot.rate_per_mwh[i] / self.sigma_scale;
            eq[(i, self.idx_omega_lo(i))] = -1.0;
            eq[(i, self.idx_omega_hi(i))] = 1.0;
            eq_rhs[i] = -slot.base_price[i];
            eq[(n, self.idx_energy(i))] = slot.rate_per_mwh[i] / self.sigma_scale;
        }
        eq_rhs[n] = slot.energy_target / self.sigma_scale;

        let m = 10 * n + 1;
        let mut g = DMatrix::zeros(m, nv);
        let mut lo = DVector::zeros(m);
        let mut hi = DVector::zeros(m);
        let mut row = 0;
        for i in 0..n {
            // Unit-price band.
            g[(row, self.idx_ref(i))] = -slot.sensitivity[i];
            g[(row, self.idx_energy(i))] = slot.sensitivity[i];
            lo[row] = slot.price_floor[i] - slot.base_price[i];
            hi[row] = slot.price_ceiling[i] - slot.base_price[i];
            row += 1;
        }
        // Average-price cap.
        let mean_base: f64 = slot.base_price.iter().sum::<f64>() / n as f64;
        for i in 0..n {
            g[(row, self.idx_ref(i))] = -slot.sensitivity[i] / n as f64;
            g[(row, self.idx_energy(i))] = slot.sensitivity[i] / n as f64;
        }
        lo[row] = f64::NEG_INFINITY;
        hi[row] = slot.avg_price_cap - mean_base;
        row += 1;
        for i in 0..n {
            // Energy box.
            g[(row, self.idx_energy(i))] = 1.0;
            lo[row] = slot.energy_lo[i];
            hi[row] = slot.energy_hi[i];
            row += 1;
            // Lower gate: energy may leave the floor only when open.
            g[(row, self.idx_energy(i))] = 1.0;
            g[(row, self.idx_switch_lo(i))] = -1.0;
            lo[row] = f64::NEG_INFINITY;
            hi[row] = slot.energy_lo[i];
            row += 1;
            // Lower gate: the multiplier may be positive only when closed.
            g[(row, self.idx_omega_lo(i))] = 1.0;
            g[(row, self.idx_switch_lo(i))] = 1.0;
            lo[row] = f64::NEG_INFINITY;
            hi[row] = k;
            row += 1;
            // Upper gate: energy may leave the cap only when open.
            g[(row, self.idx_energy(i))] = -1.0;
            g[(row, self.idx_switch_hi(i))] = -1.0;
            lo[row] = f64::NEG_INFINITY;
            hi[row] = -slot.energy_hi[i];
            row += 1;
            // Upper gate: the multiplier may be positive only when closed.
            g[(row, self.idx_omega_hi(i))] = 1.0;
            g[(row, self.idx_switch_hi(i))] = 1.0;
            lo[row] = f64::NEG_INFINITY;
            hi[row] = k;
            row += 1;
            // Multiplier signs.
            g[(row, self.idx_omega_lo(i))] = 1.0;
            lo[row] = 0.0;
            hi[row] = f64::INFINITY;
            row += 1;
            g[(row, self.idx_omega_hi(i))] = 1.0;
            lo[row] = 0.0;
            hi[row] = f64::INFINITY;
            row += 1;
            // Gate ranges, possibly pinned by the node.
            g[(row, self.idx_switch_lo(i))] = 1.0;
            let (zl, zu) = switch_range(node.fixed_lower[i], k);
            lo[row] = zl;
            hi[row] = zu;
            row += 1;
            g[(row, self.idx_switch_hi(i))] = 1.0;
            let (zl, zu) = switch_range(node.fixed_upper[i], k);
            lo[row] = zl;
            hi[row] = zu;
            row += 1;
        }
        debug_assert_eq!(row, m);

        QpProblem {
            quadratic: quad,
            linear: lin,
            eq_matrix: eq,
            eq_rhs,
            ineq_matrix: g,
            lower: lo,
            upper: hi,
        }
    }
}

fn mean_weight(slot: &SlotProblem) -> f64 {
    slot.rate_per_mwh.iter().sum::<f64>() / slot.locations() as f64
}

fn switch_range(fixed: Option<bool>, big_m: f64) -> (f64, f64) {
    match fixed {
        None => (0.0, big_m),
        Some(false) => (0.0, 0.0),
        Some(true) => (big_m, big_m),
    }
}

/// Default linearization constant: dominates the box gaps outright and the
/// multiplier magnitudes estimated from the price band and the equality-only
/// closed form at reference extremes, with a tenfold safety factor.
fn default_big_m(slot: &SlotProblem) -> f64 {
    let n = slot.locations();
    let primal = (0..n)
        .map(|i| slot.energy_hi[i] - slot.energy_lo[i])
        .fold(0.0f64, f64::max);
    let ref_bound = (0..n)
        .map(|i| {
            slot.energy_hi[i]
                + (slot.price_ceiling[i].abs() + slot.base_price[i].abs()) / slot.sensitivity[i]
        })
        .fold(0.0f64, f64::max);
    let sig_hi = unconstrained_response(slot, &vec![ref_bound; n]).sigma.abs();
    let sig_lo = unconstrained_response(slot, &vec![-ref_bound; n]).sigma.abs();
    let sigma_bound = sig_hi.max(sig_lo);
    let dual = (0..n)
        .map(|i| {
            slot.base_price[i].abs()
                + 2.0 * slot.sensitivity[i] * slot.energy_hi[i].abs()
                + slot.sensitivity[i] * ref_bound
                + slot.rate_per_mwh[i] * sigma_bound
        })
        .fold(0.0f64, f64::max)
        * 10.0;
    primal.max(dual)
}

/// Solves one node's relaxation. Separated out for tests and diagnostics.
pub fn solve_relaxation(
    miqp: &BilevelMiqp,
    node: &BnbNode,
    cfg: &QpConfig,
    hint: Option<&DVector<f64>>,
) -> Result<QpSolution> {
    let qp = miqp.relaxation_qp(node);
    qp_solve_hinted(&qp, cfg, hint)
}

/// Replays a pricing decision through the best-response map and reports the
/// worst disagreement: response mismatch or induced-price constraint
/// violation. Values above the verification tolerance mean the linearized
/// model produced an artifact.
pub fn verify_solution(slot: &SlotProblem, reference: &[f64], energy: &[f64]) -> Result<f64> {
    let br = best_response(slot, reference)?;
    let mismatch = br
        .energy
        .iter()
        .zip(energy)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    Ok(mismatch.max(model::price_violation(slot, reference, &br.energy)))
}

#[derive(Clone)]
struct Incumbent {
    reference: Vec<f64>,
    energy: Vec<f64>,
    sigma: f64,
    eli: f64,
    /// Largest box multiplier seen at this incumbent.
    omega_max: f64,
}

struct HeapEntry {
    bound: f64,
    seq: u64,
    node: BnbNode,
    x: DVector<f64>,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    // Reversed: BinaryHeap pops the smallest bound first, ties by insertion.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

enum SearchOutcome {
    Done(Box<ExactSolution>),
    /// The constant is provably too small, the incumbent failed replay, or
    /// a multiplier crowded the constant; enlarge it and search again.
    Suspect(String),
    Infeasible,
}

/// Finds the globally optimal pricing decision for one slot.
pub fn branch_and_bound(miqp: &BilevelMiqp, cfg: &BnbConfig) -> Result<ExactSolution> {
    let slot = &miqp.slot;
    let integrated = solve_integrated(slot)?;
    let restricted = match solve_restricted(slot, &cfg.qp) {
        Ok(rs) => Some(rs),
        Err(Error::RestrictedInfeasible(_)) => None,
        Err(e) => return Err(e),
    };

    let mut big_m = miqp.big_m;
    let mut escalations = 0;
    let mut nodes_total = 0;
    loop {
        let scaled = BilevelMiqp { slot: slot.clone(), big_m, sigma_scale: miqp.sigma_scale };
        match search(&scaled, cfg, &integrated, restricted.as_ref(), &mut nodes_total)? {
            SearchOutcome::Done(mut sol) => {
                sol.diagnostics.escalations = escalations;
                sol.diagnostics.nodes = nodes_total;
                return Ok(*sol);
            }
            SearchOutcome::Suspect(reason) => {
                if escalations >= cfg.max_escalations {
                    return Err(Error::VerificationFailure(format!(
                        "{reason} (after {escalations} constant escalations, K={big_m})"
                    )));
                }
                escalations += 1;
                big_m = (big_m * 10.0).max(default_big_m(slot));
            }
            SearchOutcome::Infeasible => {
                return Err(Error::ExactInfeasible(
                    "every switch pattern is infeasible and no priced response exists".into(),
                ))
            }
        }
    }
}

fn search(
    miqp: &BilevelMiqp,
    cfg: &BnbConfig,
    integrated: &crate::benchmarks::IntegratedSolution,
    restricted: Option<&crate::benchmarks::RestrictedSolution>,
    nodes_total: &mut u64,
) -> Result<SearchOutcome> {
    let slot = &miqp.slot;
    let n = slot.locations();
    let mut diagnostics = BnbDiagnostics {
        big_m: miqp.big_m,
        ..BnbDiagnostics::default()
    };

    // A constant below the widest box gap pins energies artificially no
    // matter how the switches fall; nothing the search finds can be trusted.
    let max_gap = (0..n)
        .map(|i| slot.energy_hi[i] - slot.energy_lo[i])
        .fold(0.0f64, f64::max);
    if miqp.big_m < max_gap {
        return Ok(SearchOutcome::Suspect(format!(
            "linearization constant {:.3e} is below the box gap bound {max_gap:.3e}",
            miqp.big_m
        )));
    }

    // The restricted optimum is itself a feasible pricing decision: its
    // stationarity rows make the response genuine, so it seeds the incumbent.
    let mut incumbent: Option<Incumbent> = None;
    if let Some(rs) = restricted {
        let br = best_response(slot, &rs.reference)?;
        if model::price_violation(slot, &rs.reference, &br.energy) <= cfg.verify_tol {
            incumbent = Some(Incumbent {
                reference: rs.reference.clone(),
                energy: br.energy.clone(),
                sigma: br.sigma,
                eli: model::eli(slot, &br.energy),
                omega_max: max_abs(&br.omega_lo).max(max_abs(&br.omega_hi)),
            });
        }
    }

    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    let mut evaluate = |node: BnbNode,
                        hint: Option<&DVector<f64>>,
                        heap: &mut BinaryHeap<HeapEntry>,
                        incumbent: &mut Option<Incumbent>,
                        diagnostics: &mut BnbDiagnostics,
                        nodes_total: &mut u64|
     -> Result<()> {
        *nodes_total += 1;
        let mut sol = solve_relaxation(miqp, &node, &cfg.qp, hint)?;
        if stalled(&sol) {
            // A stalled warm start is usually rescued by a stiff cold solve.
            let retry = QpConfig { rho: 10.0, max_iter: 2 * cfg.qp.max_iter, ..cfg.qp.clone() };
            sol = solve_relaxation(miqp, &node, &retry, None)?;
        }
        if stalled(&sol) {
            // Persistent stalls are nearly always undetected infeasibility;
            // retry unscaled with the certificate tolerance opened up.
            let retry = QpConfig {
                rho: 10.0,
                max_iter: 2 * cfg.qp.max_iter,
                scaling_iters: 0,
                infeasibility_tol: 1e-4,
                ..cfg.qp.clone()
            };
            sol = solve_relaxation(miqp, &node, &retry, None)?;
        }
        let usable = match sol.status {
            QpStatus::Optimal => true,
            QpStatus::Infeasible => false,
            QpStatus::MaxIterations => {
                // A bound from a near-converged point is still a usable
                // bound; its error is covered by the replay verification.
                if sol.primal_residual.max(sol.dual_residual) <= 1e-5 {
                    true
                } else {
                    return Err(Error::SolverFailure(format!(
                        "node relaxation stalled at residual {:.3e}",
                        sol.primal_residual.max(sol.dual_residual)
                    )));
                }
            }
        };
        if !usable {
            return Ok(());
        }
        let energy: Vec<f64> = (0..n).map(|i| sol.x[miqp.idx_energy(i)]).collect();
        let bound = model::eli(slot, &energy);
        if cfg.record_nodes {
            diagnostics.node_log.push(NodeRecord {
                depth: node.depth,
                parent_bound: node.parent_bound,
                bound,
                incumbent: incumbent.as_ref().map(|inc| inc.eli),
            });
        }
        let ub = incumbent.as_ref().map_or(f64::INFINITY, |inc| inc.eli);
        if bound >= ub - cfg.gap {
            return Ok(());
        }
        if fractionality(miqp, &node, &sol.x).is_none() {
            // Integral relaxation: replay the reference through the true
            // response before trusting it.
            let reference: Vec<f64> = (0..n).map(|i| sol.x[miqp.idx_ref(i)]).collect();
            let br = best_response(slot, &reference)?;
            let mismatch = br
                .energy
                .iter()
                .zip(&energy)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            let price_viol = model::price_violation(slot, &reference, &br.energy);
            if mismatch <= 1e-5 && price_viol <= cfg.verify_tol {
                let true_eli = model::eli(slot, &br.energy);
                if incumbent.as_ref().is_none_or(|inc| true_eli < inc.eli) {
                    let mut omega_max = 0.0f64;
                    for i in 0..n {
                        omega_max = omega_max
                            .max(sol.x[miqp.idx_omega_lo(i)])
                            .max(sol.x[miqp.idx_omega_hi(i)]);
                    }
                    *incumbent = Some(Incumbent {
                        reference,
                        energy: br.energy.clone(),
                        sigma: br.sigma,
                        eli: true_eli,
                        omega_max,
                    });
                }
            } else {
                diagnostics.rejected_candidates += 1;
            }
            return Ok(());
        }
        heap.push(HeapEntry { bound, seq, node, x: sol.x });
        seq += 1;
        Ok(())
    };

    evaluate(
        miqp.root(),
        None,
        &mut heap,
        &mut incumbent,
        &mut diagnostics,
        nodes_total,
    )?;

    while let Some(entry) = heap.pop() {
        if *nodes_total >= cfg.max_nodes {
            break;
        }
        let ub = incumbent.as_ref().map_or(f64::INFINITY, |inc| inc.eli);
        if entry.bound >= ub - cfg.gap {
            break;
        }
        let (kind, i) = match fractionality(miqp, &entry.node, &entry.x) {
            Some(pick) => pick,
            None => continue,
        };
        for value in [false, true] {
            let mut child = entry.node.clone();
            child.depth += 1;
            child.parent_bound = entry.bound;
            match kind {
                SwitchKind::Lower => child.fixed_lower[i] = Some(value),
                SwitchKind::Upper => child.fixed_upper[i] = Some(value),
            }
            // Both switches off pin the energy to both bounds at once.
            if child.fixed_lower[i] == Some(false)
                && child.fixed_upper[i] == Some(false)
                && slot.energy_hi[i] - slot.energy_lo[i] > 1e-12
            {
                continue;
            }
            evaluate(
                child,
                Some(&entry.x),
                &mut heap,
                &mut incumbent,
                &mut diagnostics,
                nodes_total,
            )?;
        }
    }

    let inc = match incumbent {
        Some(inc) => inc,
        None => return Ok(SearchOutcome::Infeasible),
    };
    let violation = verify_solution(slot, &inc.reference, &inc.energy)?;
    if violation > cfg.verify_tol {
        return Ok(SearchOutcome::Suspect(format!(
            "incumbent replay violation {violation:.3e} exceeds {:.1e}",
            cfg.verify_tol
        )));
    }
    if inc.omega_max >= 0.99 * miqp.big_m {
        return Ok(SearchOutcome::Suspect(format!(
            "box multiplier {:.3e} crowds the linearization constant {:.3e}",
            inc.omega_max, miqp.big_m
        )));
    }
    diagnostics.max_violation = violation;
    Ok(SearchOutcome::Done(Box::new(ExactSolution {
        reference: inc.reference,
        energy: inc.energy,
        sigma: inc.sigma,
        eli: inc.eli,
        lower_bound: integrated.eli,
        upper_bound: restricted.map(|rs| rs.eli),
        diagnostics,
    })))
}

fn stalled(sol: &QpSolution) -> bool {
    sol.status == QpStatus::MaxIterations
        && sol.primal_residual.max(sol.dual_residual) > 1e-6
}

#[derive(Clone, Copy)]
enum SwitchKind {
    Lower,
    Upper,
}

/// Most fractional free switch, ties to the lowest index with lower
/// switches first. `None` when all free switches are integral.
fn fractionality(miqp: &BilevelMiqp, node: &BnbNode, x: &DVector<f64>) -> Option<(SwitchKind, usize)> {
    let n = miqp.slot.locations();
    let mut best: Option<((SwitchKind, usize), f64)> = None;
    let mut consider = |kind: SwitchKind, i: usize, gate: f64| {
        let value = gate / miqp.big_m;
        let frac = value.min(1.0 - value);
        if frac <= 1e-6 {
            return;
        }
        let better = match &best {
            None => true,
            Some((_, bf)) => frac > *bf + 1e-12,
        };
        if better {
            best = Some(((kind, i), frac));
        }
    };
    for i in 0..n {
        if node.fixed_lower[i].is_none() {
            consider(SwitchKind::Lower, i, x[miqp.idx_switch_lo(i)]);
        }
    }
    for i in 0..n {
        if node.fixed_upper[i].is_none() {
            consider(SwitchKind::Upper, i, x[miqp.idx_switch_hi(i)]);
        }
    }
    best.map(|(pick, _)| pick)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}
