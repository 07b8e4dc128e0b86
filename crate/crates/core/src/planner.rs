//! Quantum-core selection and interleaved channel assignment.
//!
//! Crosstalk only reaches the quantum core from its neighbors, so the
//! planner fills non-neighbor cores first and spreads whatever is left over
//! the neighbors by ascending accumulated load. An exhaustive search over
//! every core assignment (and every outer quantum core) is available as a
//! reference.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fibergrid::{
    classical_frequency, quantum_frequency, validate_plan, ChannelAssignment, ChannelPlan, CoreId,
    CoreTopology, Direction, Freq, FrequencyGrid, Role,
};
use crate::scalar::{dbm_to_mw, Scalar};
use crate::xtmodel::{predict_xt_pcr, XtalkModel};

/// Largest number of classical channels the exhaustive search accepts.
pub const EXHAUSTIVE_LIMIT: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicalDemand<T> {
    /// Classical grid ordinal `n`.
    pub ordinal: u32,
    pub power_dbm: T,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrafficDemand<T> {
    pub classical: Vec<ClassicalDemand<T>>,
    pub quantum_count: u32,
    pub sync_required: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlannerOptions<T> {
    /// When present, costs are predicted crosstalk counts rather than raw
    /// neighbor power.
    pub model: Option<XtalkModel<T>>,
    pub exhaustive: bool,
}

/// The outer core whose neighbors carry the least classical power (mW).
/// Ties go to the lowest index.
pub fn choose_quantum_core<T: Scalar>(
    topology: &CoreTopology,
    per_core_power: &BTreeMap<CoreId, T>,
) -> Result<CoreId> {
    let mut best: Option<(T, CoreId)> = None;
    for core in topology.outer_cores() {
        let load = topology
            .neighbors(core)?
            .iter()
            .fold(T::zero(), |a, c| a + per_core_power.get(c).copied().unwrap_or(T::zero()));
        if best.is_none_or(|(b, _)| load < b) {
            best = Some((load, core));
        }
    }
    best.map(|(_, c)| c)
        .ok_or_else(|| Error::domain("topology has no outer core for the quantum channel"))
}

/// Crosstalk cost of a plan: predicted counts/s per km summed over both
/// directions when a model is given, otherwise total neighbor power in mW.
pub fn plan_cost<T: Scalar>(plan: &ChannelPlan<T>, model: Option<&XtalkModel<T>>) -> Result<T> {
    match model {
        Some(m) => Direction::ALL.iter().try_fold(T::zero(), |acc, &d| {
            Ok(acc + predict_xt_pcr(m, plan, T::one(), d, None)?)
        }),
        None => {
            let neighbors = plan.topology.neighbors(plan.quantum_core)?;
            Ok(plan
                .channels(Role::Classical)
                .filter(|a| neighbors.contains(&a.core))
                .fold(T::zero(), |acc, a| acc + a.launch_power.map_or(T::zero(), dbm_to_mw)))
        }
    }
}

/// Greedy assignment with the raw neighbor-power objective.
pub fn assign_channels<T: Scalar>(
    demand: &TrafficDemand<T>,
    topology: &CoreTopology,
    grid: &FrequencyGrid,
) -> Result<ChannelPlan<T>> {
    plan_channels(demand, topology, grid, &PlannerOptions::default())
}

pub fn plan_channels<T: Scalar>(
    demand: &TrafficDemand<T>,
    topology: &CoreTopology,
    grid: &FrequencyGrid,
    options: &PlannerOptions<T>,
) -> Result<ChannelPlan<T>> {
    check_demand(demand, topology, grid)?;
    let plan = if options.exhaustive {
        exhaustive_plan(demand, topology, grid, options.model.as_ref())?
    } else {
        greedy_plan(demand, topology, grid, options.model.as_ref())?
    };
    let violations = validate_plan(&plan);
    if !violations.is_empty() {
        return Err(Error::InvalidPlan(violations));
    }
    Ok(plan)
}

fn check_demand<T: Scalar>(demand: &TrafficDemand<T>, topology: &CoreTopology, grid: &FrequencyGrid) -> Result<()> {
    for c in &demand.classical {
        if !c.power_dbm.is_finite() {
            return Err(Error::domain(format!("classical ordinal {} has a non-finite power", c.ordinal)));
        }
        classical_frequency(c.ordinal, grid)?;
    }
    // each classical core holds a given grid slot at most once
    let slots_per_ordinal = topology.core_count().saturating_sub(1) as usize;
    let mut per_ordinal: BTreeMap<u32, usize> = BTreeMap::new();
    for c in &demand.classical {
        *per_ordinal.entry(c.ordinal).or_default() += 1;
    }
    let shortfall: usize = per_ordinal
        .values()
        .map(|&n| n.saturating_sub(slots_per_ordinal))
        .sum();
    if shortfall > 0 {
        return Err(Error::Capacity { shortfall });
    }
    if topology.outer_cores().next().is_none() {
        return Err(Error::domain("topology has no outer core for the quantum channel"));
    }
    Ok(())
}

fn channel_weight<T: Scalar>(c: &ClassicalDemand<T>, model: Option<&XtalkModel<T>>) -> T {
    let mw = dbm_to_mw(c.power_dbm);
    model.map_or(mw, |m| m.chi(c.direction) * mw)
}

fn base_assignments<T: Scalar>(
    demand: &TrafficDemand<T>,
    grid: &FrequencyGrid,
    quantum_core: CoreId,
) -> Result<Vec<ChannelAssignment<T>>> {
    let mut out = Vec::new();
    for k in 1..=demand.quantum_count {
        out.push(ChannelAssignment::quantum(quantum_core, quantum_frequency(k, grid)?));
    }
    if demand.sync_required {
        // top classical slot of the quantum core; never carries data there
        let slot = grid.channel_count.max(1) as i64 - 1;
        out.push(ChannelAssignment {
            core: quantum_core,
            frequency: Freq(grid.f0.mhz() + slot * grid.delta_f.mhz()),
            role: Role::Sync,
            direction: Direction::Co,
            launch_power: None,
        });
    }
    Ok(out)
}

fn build_plan<T: Scalar>(
    demand: &TrafficDemand<T>,
    topology: &CoreTopology,
    grid: &FrequencyGrid,
    quantum_core: CoreId,
    cores: &[CoreId],
) -> Result<ChannelPlan<T>> {
    let mut assignments = base_assignments(demand, grid, quantum_core)?;
    for (c, &core) in demand.classical.iter().zip(cores) {
        assignments.push(ChannelAssignment::classical(
            core,
            classical_frequency(c.ordinal, grid)?,
            c.direction,
            c.power_dbm,
        ));
    }
    Ok(ChannelPlan {
        topology: topology.clone(),
        grid: *grid,
        assignments,
        quantum_core,
    })
}

fn greedy_plan<T: Scalar>(
    demand: &TrafficDemand<T>,
    topology: &CoreTopology,
    grid: &FrequencyGrid,
    model: Option<&XtalkModel<T>>,
) -> Result<ChannelPlan<T>> {
    let quantum_core = choose_quantum_core::<T>(topology, &BTreeMap::new())?;
    let neighbors = topology.neighbors(quantum_core)?;
    let candidates: Vec<CoreId> = topology
        .cores()
        .filter(|&c| c != quantum_core)
        .collect();

    let mut order: Vec<usize> = (0..demand.classical.len()).collect();
    let weights: Vec<T> = demand.classical.iter().map(|c| channel_weight(c, model)).collect();
    order.sort_by(|&a, &b| {
        weights[b]
            .partial_cmp(&weights[a])
            .expect("finite weights")
            .then(a.cmp(&b))
    });

    let mut load: BTreeMap<CoreId, T> = candidates.iter().map(|&c| (c, T::zero())).collect();
    let mut used: BTreeSet<(CoreId, u32)> = BTreeSet::new();
    let mut chosen = vec![CoreId(0); demand.classical.len()];
    for i in order {
        let ordinal = demand.classical[i].ordinal;
        let pick = |neighbor: bool| {
            candidates
                .iter()
                .copied()
                .filter(|c| neighbors.contains(c) == neighbor && !used.contains(&(*c, ordinal)))
                .min_by(|a, b| {
                    load[a]
                        .partial_cmp(&load[b])
                        .expect("finite load")
                        .then(a.cmp(b))
                })
        };
        let core = pick(false)
            .or_else(|| pick(true))
            .ok_or(Error::Capacity { shortfall: 1 })?;
        used.insert((core, ordinal));
        *load.get_mut(&core).expect("candidate core") = load[&core] + weights[i];
        chosen[i] = core;
    }
    build_plan(demand, topology, grid, quantum_core, &chosen)
}

/// Best assignment found by exhaustive search, with its cost.
#[derive(Debug, Clone)]
pub struct ExhaustiveResult<T> {
    pub plan: ChannelPlan<T>,
    pub cost: T,
}

fn exhaustive_plan<T: Scalar>(
    demand: &TrafficDemand<T>,
    topology: &CoreTopology,
    grid: &FrequencyGrid,
    model: Option<&XtalkModel<T>>,
) -> Result<ChannelPlan<T>> {
    Ok(exhaustive_search(demand, topology, grid, model)?.plan)
}

/// Exact branch-and-bound search over every outer quantum core and every
/// placement of every classical channel. Channels are placed heaviest first,
/// trying cores that do not touch the quantum core before neighbors; a branch
/// is cut once its cost plus a lower bound on the rest reaches the best
/// complete plan. The bound: channels of one ordinal beyond the free
/// non-neighbor slots left for it must go to neighbors, and cost at least
/// their lightest weights. Cost only sees whether a core touches the quantum
/// core, so each channel branches once per class rather than once per core.
/// Quantum cores are searched concurrently; the
/// winner is the lowest (cost, quantum core) pair, and each per-core search
/// is sequential, so the result does not depend on scheduling.
pub fn exhaustive_search<T: Scalar>(
    demand: &TrafficDemand<T>,
    topology: &CoreTopology,
    grid: &FrequencyGrid,
    model: Option<&XtalkModel<T>>,
) -> Result<ExhaustiveResult<T>> {
    check_demand(demand, topology, grid)?;
    if demand.classical.len() > EXHAUSTIVE_LIMIT {
        return Err(Error::domain(format!(
            "exhaustive planning is limited to {EXHAUSTIVE_LIMIT} classical channels, got {}",
            demand.classical.len()
        )));
    }
    let weights: Vec<T> = demand.classical.iter().map(|c| channel_weight(c, model)).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        weights[b]
            .partial_cmp(&weights[a])
            .expect("finite weights")
            .then(a.cmp(&b))
    });
    let sorted_weights: Vec<T> = order.iter().map(|&i| weights[i]).collect();
    let sorted_ordinals: Vec<u32> = order.iter().map(|&i| demand.classical[i].ordinal).collect();
    let quantum_cores: Vec<CoreId> = topology.outer_cores().collect();

    let per_core: Vec<Option<(T, CoreId, Vec<CoreId>)>> = quantum_cores
        .par_iter()
        .map(|&q| {
            let neighbors = topology.neighbors(q).ok()?;
            let mut cores: Vec<(CoreId, bool)> = topology
                .cores()
                .filter(|&c| c != q)
                .map(|c| (c, neighbors.contains(&c)))
                .collect();
            cores.sort_by_key(|&(c, n)| (n, c));
            let mut search = Search {
                weights: &sorted_weights,
                ordinals: &sorted_ordinals,
                cores: &cores,
                free_cores: cores.iter().filter(|(_, n)| !n).count(),
                current: Vec::with_capacity(weights.len()),
                best: None,
            };
            search.descend(T::zero());
            search.best.map(|(cost, sorted)| {
                let mut placement = vec![CoreId(0); sorted.len()];
                for (slot, &i) in order.iter().enumerate() {
                    placement[i] = sorted[slot];
                }
                (cost, q, placement)
            })
        })
        .collect();

    let (_, quantum_core, placement) = per_core
        .into_iter()
        .flatten()
        .min_by(|a, b| a.0.partial_cmp(&b.0).expect("finite cost").then(a.1.cmp(&b.1)))
        .ok_or(Error::Capacity { shortfall: 1 })?;
    let plan = build_plan(demand, topology, grid, quantum_core, &placement)?;
    let cost = plan_cost(&plan, model)?;
    Ok(ExhaustiveResult { plan, cost })
}

struct Search<'a, T> {
    /// Heaviest first.
    weights: &'a [T],
    ordinals: &'a [u32],
    /// Non-neighbors first.
    cores: &'a [(CoreId, bool)],
    free_cores: usize,
    current: Vec<CoreId>,
    best: Option<(T, Vec<CoreId>)>,
}

impl<T: Scalar> Search<'_, T> {
    /// Least neighbor cost the unplaced channels can still incur.
    fn remaining_bound(&self) -> T {
        let placed = self.current.len();
        let mut bound = T::zero();
        let mut seen: Vec<u32> = Vec::new();
        for &o in &self.ordinals[placed..] {
            if seen.contains(&o) {
                continue;
            }
            seen.push(o);
            let used_free = self.current[..placed]
                .iter()
                .zip(self.ordinals)
                .filter(|&(c, &oo)| oo == o && self.cores.iter().any(|&(k, n)| k == *c && !n))
                .count();
            let free = self.free_cores - used_free;
            // weights are sorted descending, so the lightest come last
            let rest: Vec<T> = self.ordinals[placed..]
                .iter()
                .zip(&self.weights[placed..])
                .filter(|(&oo, _)| oo == o)
                .map(|(_, &w)| w)
                .collect();
            if rest.len() > free {
                bound = rest[free..].iter().fold(bound, |a, &w| a + w);
            }
        }
        bound
    }

    fn descend(&mut self, cost: T) {
        if let Some((b, _)) = &self.best {
            if cost + self.remaining_bound() >= *b {
                return;
            }
        }
        let i = self.current.len();
        if i == self.weights.len() {
            self.best = Some((cost, self.current.clone()));
            return;
        }
        // cores of one class are interchangeable, so one free core per class
        let mut tried = [false; 2];
        for &(core, neighbor) in self.cores {
            let taken = self
                .current
                .iter()
                .zip(self.ordinals)
                .any(|(&c, &o)| c == core && o == self.ordinals[i]);
            if taken || tried[neighbor as usize] {
                continue;
            }
            tried[neighbor as usize] = true;
            let step = if neighbor { self.weights[i] } else { T::zero() };
            self.current.push(core);
            self.descend(cost + step);
            self.current.pop();
        }
    }
}
