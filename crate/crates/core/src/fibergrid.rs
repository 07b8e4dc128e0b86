//! Seven-core fiber topology, the DWDM grid, and interleaved channel plans.
//!
//! Classical channels sit on `f0 + (n-1)·Δf`; quantum channels sit halfway
//! between, on `f0 + (k-½)·Δf`, so crosstalk from any classical channel lands
//! at least `Δf/2` away from every quantum channel. Frequencies are held as
//! integer MHz, which keeps the half-spacing exact for any integer-GHz grid.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{linear_to_db, Scalar};

/// 1-based core index. Core 1 is the center of the default hexagonal layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoreId(pub u32);

impl fmt::Display for CoreId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "core-{}", self.0)
    }
}

/// Optical frequency in integer MHz.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Freq(pub i64);

impl Freq {
    pub const fn from_ghz(ghz: i64) -> Self {
        Freq(ghz * 1_000)
    }

    pub const fn mhz(self) -> i64 {
        self.0
    }

    /// Whole GHz, if the frequency is an integer number of GHz.
    pub fn whole_ghz(self) -> Option<i64> {
        (self.0 % 1_000 == 0).then_some(self.0 / 1_000)
    }

    pub fn thz(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn abs_diff(self, other: Freq) -> Freq {
        Freq((self.0 - other.0).abs())
    }
}

impl fmt::Display for Freq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.whole_ghz() {
            Some(g) => write!(f, "{g} GHz"),
            None => write!(f, "{} GHz", self.0 as f64 / 1e3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoreTopology {
    core_count: u32,
    center: CoreId,
    // normalized so that .0 < .1
    adjacency: BTreeSet<(CoreId, CoreId)>,
}

impl CoreTopology {
    /// The default seven-core layout: core 1 in the center, cores 2–7 around
    /// it in cyclic order.
    pub fn hexagonal() -> Self {
        let mut pairs = Vec::with_capacity(12);
        for outer in 2..=7u32 {
            pairs.push((CoreId(1), CoreId(outer)));
            let next = if outer == 7 { 2 } else { outer + 1 };
            pairs.push((CoreId(outer), CoreId(next)));
        }
        Self::from_adjacency(7, CoreId(1), pairs).expect("hexagonal layout is well formed")
    }

    /// Builds a topology from an explicit adjacency list. Pairs are unordered.
    pub fn from_adjacency(
        core_count: u32,
        center: CoreId,
        pairs: impl IntoIterator<Item = (CoreId, CoreId)>,
    ) -> Result<Self> {
        if core_count == 0 {
            return Err(Error::domain("topology needs at least one core"));
        }
        let in_range = |c: CoreId| c.0 >= 1 && c.0 <= core_count;
        if !in_range(center) {
            return Err(Error::domain(format!("center {center} not in 1..={core_count}")));
        }
        let mut adjacency = BTreeSet::new();
        for (a, b) in pairs {
            if !in_range(a) || !in_range(b) {
                return Err(Error::domain(format!(
                    "adjacency ({a}, {b}) references a core outside 1..={core_count}"
                )));
            }
            if a == b {
                return Err(Error::domain(format!("{a} cannot neighbor itself")));
            }
            adjacency.insert((a.min(b), a.max(b)));
        }
        Ok(Self {
            core_count,
            center,
            adjacency,
        })
    }

    pub fn core_count(&self) -> u32 {
        self.core_count
    }

    pub fn center(&self) -> CoreId {
        self.center
    }

    pub fn contains(&self, core: CoreId) -> bool {
        core.0 >= 1 && core.0 <= self.core_count
    }

    pub fn cores(&self) -> impl Iterator<Item = CoreId> + '_ {
        (1..=self.core_count).map(CoreId)
    }

    /// Every core except the center, ascending.
    pub fn outer_cores(&self) -> impl Iterator<Item = CoreId> + '_ {
        self.cores().filter(move |&c| c != self.center)
    }

    pub fn is_outer(&self, core: CoreId) -> bool {
        self.contains(core) && core != self.center
    }

    pub fn adjacency(&self) -> impl Iterator<Item = (CoreId, CoreId)> + '_ {
        self.adjacency.iter().copied()
    }

    pub fn are_adjacent(&self, a: CoreId, b: CoreId) -> bool {
        self.adjacency.contains(&(a.min(b), a.max(b)))
    }

    pub fn neighbors(&self, core: CoreId) -> Result<BTreeSet<CoreId>> {
        if !self.contains(core) {
            return Err(Error::domain(format!(
                "{core} is not in a {}-core topology",
                self.core_count
            )));
        }
        Ok(self
            .adjacency
            .iter()
            .filter_map(|&(a, b)| {
                if a == core {
                    Some(b)
                } else if b == core {
                    Some(a)
                } else {
                    None
                }
            })
            .collect())
    }
}

impl Default for CoreTopology {
    fn default() -> Self {
        Self::hexagonal()
    }
}

/// Cores adjacent to `core`.
pub fn nearest_neighbors(topology: &CoreTopology, core: CoreId) -> Result<BTreeSet<CoreId>> {
    topology.neighbors(core)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    /// First classical channel.
    pub f0: Freq,
    pub delta_f: Freq,
    pub channel_count: u32,
}

impl FrequencyGrid {
    pub fn new(f0: Freq, delta_f: Freq, channel_count: u32) -> Result<Self> {
        if delta_f.0 <= 0 {
            return Err(Error::domain(format!("channel spacing must be positive, got {delta_f}")));
        }
        if delta_f.0 % 2 != 0 {
            return Err(Error::domain(format!(
                "channel spacing {} MHz has no exact midpoint",
                delta_f.0
            )));
        }
        if f0.0 <= 0 {
            return Err(Error::domain(format!("first frequency must be positive, got {f0}")));
        }
        Ok(Self {
            f0,
            delta_f,
            channel_count,
        })
    }

    pub fn from_ghz(f0_ghz: i64, delta_f_ghz: i64, channel_count: u32) -> Result<Self> {
        Self::new(Freq::from_ghz(f0_ghz), Freq::from_ghz(delta_f_ghz), channel_count)
    }

    pub fn half_spacing(&self) -> Freq {
        Freq(self.delta_f.0 / 2)
    }

    /// Ordinal `k` such that `f = f_q(k)`, if `f` lies on the quantum grid.
    pub fn quantum_ordinal(&self, f: Freq) -> Option<u32> {
        let offset = f.0 - self.f0.0 + self.half_spacing().0;
        if offset <= 0 || offset % self.delta_f.0 != 0 {
            return None;
        }
        u32::try_from(offset / self.delta_f.0).ok()
    }
}

/// `f0 + (n-1)·Δf` for `1 ≤ n ≤ channel_count`.
pub fn classical_frequency(n: u32, grid: &FrequencyGrid) -> Result<Freq> {
    if n < 1 || n > grid.channel_count {
        return Err(Error::domain(format!(
            "classical ordinal {n} outside 1..={}",
            grid.channel_count
        )));
    }
    Ok(Freq(grid.f0.0 + (n as i64 - 1) * grid.delta_f.0))
}

/// `f0 + (k-½)·Δf` for `k ≥ 1`.
pub fn quantum_frequency(k: u32, grid: &FrequencyGrid) -> Result<Freq> {
    if k < 1 {
        return Err(Error::domain("quantum ordinal must be at least 1"));
    }
    Ok(Freq(grid.f0.0 + (2 * k as i64 - 1) * grid.half_spacing().0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Quantum,
    Classical,
    Sync,
}

/// Propagation direction relative to the quantum signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Co,
    Counter,
}

impl Direction {
    pub const ALL: [Direction; 2] = [Direction::Co, Direction::Counter];

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Co => "co",
            Direction::Counter => "counter",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "co" => Ok(Direction::Co),
            "counter" => Ok(Direction::Counter),
            other => Err(Error::domain(format!(
                "direction must be `co` or `counter`, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelAssignment<T> {
    pub core: CoreId,
    pub frequency: Freq,
    pub role: Role,
    pub direction: Direction,
    /// Launch power in dBm; `None` for quantum channels.
    pub launch_power: Option<T>,
}

impl<T: Scalar> ChannelAssignment<T> {
    pub fn quantum(core: CoreId, frequency: Freq) -> Self {
        Self {
            core,
            frequency,
            role: Role::Quantum,
            direction: Direction::Co,
            launch_power: None,
        }
    }

    pub fn classical(core: CoreId, frequency: Freq, direction: Direction, power_dbm: T) -> Self {
        Self {
            core,
            frequency,
            role: Role::Classical,
            direction,
            launch_power: Some(power_dbm),
        }
    }

    pub fn sync(core: CoreId, frequency: Freq, power_dbm: T) -> Self {
        Self {
            core,
            frequency,
            role: Role::Sync,
            direction: Direction::Co,
            launch_power: Some(power_dbm),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPlan<T> {
    pub topology: CoreTopology,
    pub grid: FrequencyGrid,
    pub assignments: Vec<ChannelAssignment<T>>,
    pub quantum_core: CoreId,
}

impl<T: Scalar> ChannelPlan<T> {
    pub fn channels(&self, role: Role) -> impl Iterator<Item = &ChannelAssignment<T>> + '_ {
        self.assignments.iter().filter(move |a| a.role == role)
    }

    /// Every classical channel takes `direction`.
    pub fn with_classical_direction(&self, direction: Direction) -> Self {
        let mut plan = self.clone();
        for a in plan.assignments.iter_mut().filter(|a| a.role == Role::Classical) {
            a.direction = direction;
        }
        plan
    }

    /// Sets every core's total classical launch power (the fan-in port power)
    /// to `port_dbm`, split evenly over the classical channels in that core.
    pub fn with_port_power(&self, port_dbm: T) -> Self {
        let mut plan = self.clone();
        let counts: Vec<(CoreId, usize)> = self
            .topology
            .cores()
            .map(|c| (c, self.channels(Role::Classical).filter(|a| a.core == c).count()))
            .collect();
        for a in plan.assignments.iter_mut().filter(|a| a.role == Role::Classical) {
            let n = counts
                .iter()
                .find(|(c, _)| *c == a.core)
                .map_or(1, |&(_, n)| n.max(1));
            a.launch_power = Some(port_dbm - linear_to_db(T::lit(n as f64)));
        }
        plan
    }

    /// Same plan with every classical channel removed.
    pub fn without_classical(&self) -> Self {
        let mut plan = self.clone();
        plan.assignments.retain(|a| a.role != Role::Classical);
        plan
    }
}

/// One broken plan rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    UnknownCore(CoreId),
    QuantumCoreNotOuter(CoreId),
    QuantumOutsideQuantumCore { core: CoreId, frequency: Freq },
    QuantumOffGrid(Freq),
    ClassicalInQuantumCore(Freq),
    SeparationBelowHalfSpacing {
        quantum: Freq,
        classical: Freq,
        classical_core: CoreId,
    },
    SyncMisplaced { core: CoreId, direction: Direction },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnknownCore(c) => write!(f, "{c} is not in the topology"),
            Violation::QuantumCoreNotOuter(c) => write!(f, "quantum core must be outer ({c} is the center)"),
            Violation::QuantumOutsideQuantumCore { core, frequency } => {
                write!(f, "quantum channel at {frequency} is in {core}, not the quantum core")
            }
            Violation::QuantumOffGrid(q) => {
                write!(f, "quantum channel at {q} is not on the interleaved quantum grid")
            }
            Violation::ClassicalInQuantumCore(c) => {
                write!(f, "classical channel at {c} occupies the quantum core")
            }
            Violation::SeparationBelowHalfSpacing {
                quantum,
                classical,
                classical_core,
            } => write!(
                f,
                "separation below Δf/2 between quantum {quantum} and classical {classical} in {classical_core}"
            ),
            Violation::SyncMisplaced { core, direction } => write!(
                f,
                "sync channel must share the quantum core and direction (found {core}, {direction})"
            ),
        }
    }
}

/// Checks a plan against the allocation rules. An empty list means the plan
/// is valid; order follows the rule order, then assignment order.
pub fn validate_plan<T: Scalar>(plan: &ChannelPlan<T>) -> Vec<Violation> {
    let mut out = Vec::new();
    let topo = &plan.topology;
    if !topo.contains(plan.quantum_core) {
        out.push(Violation::UnknownCore(plan.quantum_core));
    } else if !topo.is_outer(plan.quantum_core) {
        out.push(Violation::QuantumCoreNotOuter(plan.quantum_core));
    }
    for a in &plan.assignments {
        if !topo.contains(a.core) {
            out.push(Violation::UnknownCore(a.core));
        }
    }
    let half = plan.grid.half_spacing();
    for q in plan.channels(Role::Quantum) {
        if q.core != plan.quantum_core {
            out.push(Violation::QuantumOutsideQuantumCore {
                core: q.core,
                frequency: q.frequency,
            });
        }
        if plan.grid.quantum_ordinal(q.frequency).is_none() {
            out.push(Violation::QuantumOffGrid(q.frequency));
        }
    }
    for c in plan.channels(Role::Classical) {
        if c.core == plan.quantum_core {
            out.push(Violation::ClassicalInQuantumCore(c.frequency));
        }
    }
    for q in plan.channels(Role::Quantum) {
        for c in plan.channels(Role::Classical) {
            if q.frequency.abs_diff(c.frequency) < half {
                out.push(Violation::SeparationBelowHalfSpacing {
                    quantum: q.frequency,
                    classical: c.frequency,
                    classical_core: c.core,
                });
            }
        }
    }
    for s in plan.channels(Role::Sync) {
        if s.core != plan.quantum_core || s.direction != Direction::Co {
            out.push(Violation::SyncMisplaced {
                core: s.core,
                direction: s.direction,
            });
        }
    }
    out
}

/// The coexistence plan used in the field experiment: quantum at 193.5 THz in
/// core 3, classical at 193.4/193.6 THz in each of its neighbors (cores 1, 2,
/// 4), and a synchronization channel at 193.3 THz alongside the quantum
/// channel. Each fan-in port carries `port_dbm` in total.
pub fn reference_plan<T: Scalar>(port_dbm: T, direction: Direction) -> ChannelPlan<T> {
    let grid = FrequencyGrid::from_ghz(193_350, 100, 40).expect("valid grid");
    let q = CoreId(3);
    let mut assignments = vec![
        ChannelAssignment::quantum(q, Freq::from_ghz(193_500)),
        ChannelAssignment::sync(q, Freq::from_ghz(193_300), T::zero()),
    ];
    for core in [1, 2, 4] {
        for ghz in [193_400, 193_600] {
            assignments.push(ChannelAssignment::classical(
                CoreId(core),
                Freq::from_ghz(ghz),
                direction,
                port_dbm,
            ));
        }
    }
    ChannelPlan {
        topology: CoreTopology::hexagonal(),
        grid,
        assignments,
        quantum_core: q,
    }
    .with_port_power(port_dbm)
}
