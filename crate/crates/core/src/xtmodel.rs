//! Intercore-crosstalk (IC-XT) noise model.
//!
//! Crosstalk counts in the quantum core grow linearly with the launch power
//! in each neighboring classical core and with fiber length, and do not
//! depend on wavelength. The model keeps one coefficient per propagation
//! direction, in counts/s per mW per km per active neighbor core.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fibergrid::{ChannelPlan, CoreId, Direction, Freq, Role};
use crate::scalar::{dbm_to_mw, linear_to_db, loss_to_transmission, Scalar};

/// Crosstalk count rates above this are flagged as beyond plausible gated
/// SPD operation (the model itself never saturates).
pub const DEFAULT_SATURATION_WARNING_CPS: f64 = 1e6;

/// Detector dark-count floor used when none is supplied.
pub const DEFAULT_DARK_FLOOR_CPS: f64 = 10.0;

/// One photon-count measurement taken with no quantum signal present.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord<T> {
    /// Launch power at each classical fan-in port, dBm.
    pub launch_power_dbm: T,
    /// Counts per second at the SPD.
    pub pcr: T,
    pub direction: Direction,
    pub active_cores: BTreeSet<CoreId>,
    pub probe_frequency: Freq,
    pub fiber_length_km: T,
    /// Total filter-chain loss in front of the detector, dB.
    pub filter_chain_loss_db: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XtalkModel<T> {
    pub chi_co: T,
    pub chi_counter: T,
    pub reference_filter_loss_db: T,
    pub dark_floor: T,
}

impl<T: Scalar> XtalkModel<T> {
    pub fn new(chi_co: T, chi_counter: T, reference_filter_loss_db: T, dark_floor: T) -> Result<Self> {
        let m = Self {
            chi_co,
            chi_counter,
            reference_filter_loss_db,
            dark_floor,
        };
        m.check()?;
        Ok(m)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.chi_co > T::zero() && self.chi_co.is_finite()) {
            return Err(Error::domain(format!("chi_co must be positive, got {}", self.chi_co)));
        }
        if !(self.chi_counter > T::zero() && self.chi_counter.is_finite()) {
            return Err(Error::domain(format!(
                "chi_counter must be positive, got {}",
                self.chi_counter
            )));
        }
        if !(self.dark_floor >= T::zero()) {
            return Err(Error::domain(format!(
                "dark floor must be non-negative, got {}",
                self.dark_floor
            )));
        }
        Ok(())
    }

    pub fn chi(&self, direction: Direction) -> T {
        match direction {
            Direction::Co => self.chi_co,
            Direction::Counter => self.chi_counter,
        }
    }

    /// Counter/co coefficient ratio in dB (negative when counter is quieter).
    pub fn direction_ratio_db(&self) -> T {
        linear_to_db(self.chi_counter / self.chi_co)
    }

    pub fn exceeds_saturation(&self, pcr: T) -> bool {
        pcr > T::lit(DEFAULT_SATURATION_WARNING_CPS)
    }

    /// Synthetic coefficients tuned to the reported measurement trends
    /// (counter-propagation 10 dB below co-propagation). Not digitized data.
    pub fn synthetic_default() -> Self {
        Self {
            chi_co: T::lit(15.0),
            chi_counter: T::lit(1.5),
            reference_filter_loss_db: T::lit(2.9),
            dark_floor: T::lit(DEFAULT_DARK_FLOOR_CPS),
        }
    }
}

/// Narrowband filter placed between the demultiplexer and the detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec<T> {
    pub insertion_loss_db: T,
    pub passband_width_nm: T,
    /// Extra crosstalk rejection beyond the insertion loss, dB.
    pub out_of_band_isolation_db: T,
}

impl<T: Scalar> FilterSpec<T> {
    pub fn new(insertion_loss_db: T, passband_width_nm: T, out_of_band_isolation_db: T) -> Result<Self> {
        if !(insertion_loss_db >= T::zero()) {
            return Err(Error::domain("filter insertion loss must be non-negative"));
        }
        if !(passband_width_nm > T::zero()) {
            return Err(Error::domain("filter passband must be positive"));
        }
        if !(out_of_band_isolation_db >= T::zero()) {
            return Err(Error::domain("filter isolation bonus must be non-negative"));
        }
        Ok(Self {
            insertion_loss_db,
            passband_width_nm,
            out_of_band_isolation_db,
        })
    }

    /// Fraction of crosstalk noise that makes it through the filter.
    pub fn noise_transmission(&self) -> T {
        loss_to_transmission(self.insertion_loss_db + self.out_of_band_isolation_db)
    }

    /// 0.6 nm filter with 2.1 dB insertion loss and a synthetic 8 dB
    /// crosstalk rejection bonus.
    pub fn synthetic_default() -> Self {
        Self {
            insertion_loss_db: T::lit(2.1),
            passband_width_nm: T::lit(0.6),
            out_of_band_isolation_db: T::lit(8.0),
        }
    }
}

fn check_uniform<T: Scalar>(records: &[MeasurementRecord<T>]) -> Result<()> {
    let Some(first) = records.first() else {
        return Err(Error::domain("no measurement records"));
    };
    for r in &records[1..] {
        if r.direction != first.direction {
            return Err(Error::MixedConfiguration { field: "direction" });
        }
        if r.active_cores != first.active_cores {
            return Err(Error::MixedConfiguration { field: "cores" });
        }
        if r.fiber_length_km != first.fiber_length_km {
            return Err(Error::MixedConfiguration { field: "length_km" });
        }
        if r.filter_chain_loss_db != first.filter_chain_loss_db {
            return Err(Error::MixedConfiguration { field: "filter_loss_db" });
        }
    }
    Ok(())
}

/// Mean of `PCR / 10^(P/10)` over the records: the count rate normalized to a
/// 0 dBm launch power.
pub fn weighted_avg_pcr<T: Scalar>(records: &[MeasurementRecord<T>]) -> Result<T> {
    check_uniform(records)?;
    let sum = records
        .iter()
        .fold(T::zero(), |acc, r| acc + r.pcr / dbm_to_mw(r.launch_power_dbm));
    Ok(sum / T::lit(records.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit<T> {
    pub slope: T,
    pub intercept: T,
    pub r_squared: T,
}

/// Ordinary least squares of PCR against linear launch power (mW).
///
/// A perfectly flat response has no explained variance; its `r_squared` is
/// reported as 0.
pub fn fit_linearity<T: Scalar>(records: &[MeasurementRecord<T>]) -> Result<LinearFit<T>> {
    if records.len() < 3 {
        return Err(Error::domain(format!(
            "linearity fit needs at least 3 records, got {}",
            records.len()
        )));
    }
    check_uniform(records)?;
    let n = T::lit(records.len() as f64);
    let xs: Vec<T> = records.iter().map(|r| dbm_to_mw(r.launch_power_dbm)).collect();
    let mean_x = xs.iter().fold(T::zero(), |a, &x| a + x) / n;
    let mean_y = records.iter().fold(T::zero(), |a, r| a + r.pcr) / n;
    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    for (x, r) in xs.iter().zip(records) {
        let dx = *x - mean_x;
        let dy = r.pcr - mean_y;
        sxx = sxx + dx * dx;
        sxy = sxy + dx * dy;
        syy = syy + dy * dy;
    }
    if sxx <= T::zero() {
        return Err(Error::domain("linearity fit needs distinct launch powers"));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let r_squared = if syy > T::zero() {
        let ss_res = xs.iter().zip(records).fold(T::zero(), |a, (&x, r)| {
            let e = r.pcr - (intercept + slope * x);
            a + e * e
        });
        (T::one() - ss_res / syy).max(T::zero()).min(T::one())
    } else {
        T::zero()
    };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Per-group outcome of a calibration run.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary<T> {
    pub direction: Direction,
    pub cores: BTreeSet<CoreId>,
    pub fiber_length_km: T,
    pub filter_chain_loss_db: T,
    pub records: usize,
    /// Dark-subtracted count rate normalized to 0 dBm per port.
    pub normalized_pcr: T,
    pub chi: T,
    /// Present when the group has at least three distinct powers.
    pub fit: Option<LinearFit<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration<T> {
    pub model: XtalkModel<T>,
    pub groups: Vec<GroupSummary<T>>,
    /// Records whose PCR fell below the dark floor and were clamped to 0.
    pub clamped_records: usize,
}

impl<T: Scalar> Calibration<T> {
    /// Crosstalk rejection, beyond the extra insertion loss, seen by groups
    /// measured through a lossier filter chain than the reference. `None`
    /// when no such group exists for `direction`.
    pub fn filter_rejection_db(&self, direction: Direction) -> Option<T> {
        let reference = self.model.reference_filter_loss_db;
        let chi_ref = self.model.chi(direction);
        let filtered: Vec<&GroupSummary<T>> = self
            .groups
            .iter()
            .filter(|g| g.direction == direction && g.filter_chain_loss_db > reference)
            .collect();
        if filtered.is_empty() {
            return None;
        }
        let total: T = filtered.iter().fold(T::zero(), |a, g| {
            let attenuation = linear_to_db(chi_ref / g.chi);
            a + attenuation - (g.filter_chain_loss_db - reference)
        });
        Some(total / T::lit(filtered.len() as f64))
    }
}

/// Fits the per-direction crosstalk coefficients.
///
/// Records are grouped by direction, active core set, and filter-chain loss.
/// Each record has `dark_floor` subtracted (clamped at 0) before the group is
/// normalized to 0 dBm; the group coefficient divides that by the number of
/// active cores and the fiber length. Groups at the lowest filter-chain loss
/// define the model, record-weighted; lossier groups are kept in the summary
/// as filtered-path data.
pub fn calibrate<T: Scalar>(records: &[MeasurementRecord<T>], dark_floor: T) -> Result<Calibration<T>> {
    if !(dark_floor >= T::zero()) {
        return Err(Error::domain("dark floor must be non-negative"));
    }
    let mut clamped_records = 0;
    let mut groups: Vec<Vec<MeasurementRecord<T>>> = Vec::new();
    for r in records {
        if !(r.pcr >= T::zero()) {
            return Err(Error::domain(format!("negative PCR {}", r.pcr)));
        }
        if !(r.fiber_length_km > T::zero()) {
            return Err(Error::domain(format!("fiber length must be positive, got {}", r.fiber_length_km)));
        }
        let mut r = r.clone();
        r.pcr = r.pcr - dark_floor;
        if r.pcr < T::zero() {
            r.pcr = T::zero();
            clamped_records += 1;
        }
        match groups.iter_mut().find(|g| {
            g[0].direction == r.direction
                && g[0].active_cores == r.active_cores
                && g[0].filter_chain_loss_db == r.filter_chain_loss_db
        }) {
            Some(g) => g.push(r),
            None => groups.push(vec![r]),
        }
    }
    for d in Direction::ALL {
        if !groups.iter().any(|g| g[0].direction == d) {
            return Err(Error::MissingDirection(d));
        }
    }

    let mut summaries = Vec::with_capacity(groups.len());
    for g in &groups {
        if g[0].active_cores.is_empty() {
            return Err(Error::domain("measurement group with no active classical cores"));
        }
        let normalized = weighted_avg_pcr(g)?;
        if normalized <= T::zero() {
            return Err(Error::DegenerateCalibration(format!(
                "{} group on cores {:?} has no counts above the dark floor",
                g[0].direction,
                g[0].active_cores.iter().map(|c| c.0).collect::<Vec<_>>()
            )));
        }
        let cores = T::lit(g[0].active_cores.len() as f64);
        let distinct_powers = {
            let mut p: Vec<T> = g.iter().map(|r| r.launch_power_dbm).collect();
            p.sort_by(|a, b| a.partial_cmp(b).expect("finite power"));
            p.dedup();
            p.len()
        };
        let fit = if distinct_powers >= 3 { fit_linearity(g).ok() } else { None };
        summaries.push(GroupSummary {
            direction: g[0].direction,
            cores: g[0].active_cores.clone(),
            fiber_length_km: g[0].fiber_length_km,
            filter_chain_loss_db: g[0].filter_chain_loss_db,
            records: g.len(),
            normalized_pcr: normalized,
            chi: normalized / (cores * g[0].fiber_length_km),
            fit,
        });
    }

    let reference = summaries
        .iter()
        .map(|s| s.filter_chain_loss_db)
        .fold(T::infinity(), T::min);
    let mut chi = [T::zero(); 2];
    for (slot, d) in Direction::ALL.into_iter().enumerate() {
        let (num, den) = summaries
            .iter()
            .filter(|s| s.direction == d && s.filter_chain_loss_db == reference)
            .fold((T::zero(), T::zero()), |(n, w), s| {
                let k = T::lit(s.records as f64);
                (n + k * s.chi, w + k)
            });
        if den == T::zero() {
            // only filtered-path groups for this direction
            return Err(Error::MissingDirection(d));
        }
        chi[slot] = num / den;
    }
    let model = XtalkModel::new(chi[0], chi[1], reference, dark_floor)?;
    Ok(Calibration {
        model,
        groups: summaries,
        clamped_records,
    })
}

/// Checks that every record's active cores neighbor `quantum_core`.
pub fn check_neighbor_groups<T: Scalar>(
    records: &[MeasurementRecord<T>],
    topology: &crate::fibergrid::CoreTopology,
    quantum_core: CoreId,
) -> Result<()> {
    let neighbors = topology.neighbors(quantum_core)?;
    for r in records {
        if let Some(c) = r.active_cores.iter().find(|c| !neighbors.contains(c)) {
            return Err(Error::domain(format!(
                "{c} in a measurement group is not a neighbor of quantum {quantum_core}"
            )));
        }
    }
    Ok(())
}

/// Predicted crosstalk count rate in the quantum channel from the classical
/// channels of `plan` travelling in `direction`.
///
/// Only channels in cores adjacent to the quantum core contribute; their
/// frequencies play no part. An extra filter attenuates the noise by its
/// insertion loss plus its rejection bonus.
pub fn predict_xt_pcr<T: Scalar>(
    model: &XtalkModel<T>,
    plan: &ChannelPlan<T>,
    length_km: T,
    direction: Direction,
    extra_filter: Option<&FilterSpec<T>>,
) -> Result<T> {
    if !(length_km > T::zero()) {
        return Err(Error::domain(format!("fiber length must be positive, got {length_km}")));
    }
    let neighbors = plan.topology.neighbors(plan.quantum_core)?;
    let mut mw = T::zero();
    for a in plan.channels(Role::Classical) {
        if a.direction != direction || !neighbors.contains(&a.core) {
            continue;
        }
        let p = a
            .launch_power
            .ok_or_else(|| Error::domain(format!("classical channel at {} has no launch power", a.frequency)))?;
        mw = mw + dbm_to_mw(p);
    }
    let filter = extra_filter.map_or(T::one(), FilterSpec::noise_transmission);
    Ok(model.chi(direction) * mw * length_km * filter)
}

/// Launch-power offset, in dB, that makes crosstalk over `base_length_km`
/// equal the crosstalk over `length_km`.
pub fn length_equivalent_boost_db<T: Scalar>(length_km: T, base_length_km: T) -> T {
    linear_to_db(length_km / base_length_km)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fibergrid::{reference_plan, ChannelAssignment, CoreTopology, FrequencyGrid};

    fn rec(p: f64, pcr: f64) -> MeasurementRecord<f64> {
        group_rec(p, pcr, Direction::Co, &[1, 2, 4], 1.0)
    }

    fn group_rec(p: f64, pcr: f64, d: Direction, cores: &[u32], len: f64) -> MeasurementRecord<f64> {
        MeasurementRecord {
            launch_power_dbm: p,
            pcr,
            direction: d,
            active_cores: cores.iter().map(|&c| CoreId(c)).collect(),
            probe_frequency: Freq::from_ghz(193_500),
            fiber_length_km: len,
            filter_chain_loss_db: 2.9,
        }
    }

    fn three_neighbor_plan(port_dbm: f64) -> ChannelPlan<f64> {
        let grid = FrequencyGrid::from_ghz(193_350, 100, 4).unwrap();
        let mut assignments = vec![ChannelAssignment::quantum(CoreId(3), Freq::from_ghz(193_500))];
        for c in [1, 2, 4] {
            assignments.push(ChannelAssignment::classical(
                CoreId(c),
                Freq::from_ghz(193_350),
                Direction::Co,
                port_dbm,
            ));
        }
        ChannelPlan {
            topology: CoreTopology::hexagonal(),
            grid,
            assignments,
            quantum_core: CoreId(3),
        }
    }

    fn model(chi_co: f64, chi_counter: f64) -> XtalkModel<f64> {
        XtalkModel::new(chi_co, chi_counter, 2.9, 0.0).unwrap()
    }

    #[test]
    fn weighted_average_examples() {
        assert_eq!(weighted_avg_pcr(&[rec(0.0, 1000.0), rec(10.0, 10000.0)]).unwrap(), 1000.0);
        // 2000 / 10^0.3, evaluated to 12 digits
        let v = weighted_avg_pcr(&[rec(3.0, 2000.0)]).unwrap();
        assert!((v - 1002.374467254).abs() < 1e-6, "{v}");
        assert_eq!(weighted_avg_pcr(&[rec(0.0, 0.0)]).unwrap(), 0.0);
    }

    #[test]
    fn weighted_average_errors() {
        assert!(matches!(weighted_avg_pcr::<f64>(&[]), Err(Error::Domain(_))));
        let mut other = rec(0.0, 1.0);
        other.fiber_length_km = 2.0;
        assert!(matches!(
            weighted_avg_pcr(&[rec(0.0, 1.0), other]),
            Err(Error::MixedConfiguration { field: "length_km" })
        ));
        let mut other = rec(0.0, 1.0);
        other.direction = Direction::Counter;
        assert!(matches!(
            weighted_avg_pcr(&[rec(0.0, 1.0), other]),
            Err(Error::MixedConfiguration { field: "direction" })
        ));
        let mut other = rec(0.0, 1.0);
        other.active_cores.remove(&CoreId(4));
        assert!(matches!(
            weighted_avg_pcr(&[rec(0.0, 1.0), other]),
            Err(Error::MixedConfiguration { field: "cores" })
        ));
        let mut other = rec(0.0, 1.0);
        other.filter_chain_loss_db = 5.0;
        assert!(matches!(
            weighted_avg_pcr(&[rec(0.0, 1.0), other]),
            Err(Error::MixedConfiguration { field: "filter_loss_db" })
        ));
    }

    #[test]
    fn calibrate_three_core_group() {
        let recs = vec![
            group_rec(0.0, 1500.0, Direction::Co, &[1, 2, 4], 1.0),
            group_rec(0.0, 150.0, Direction::Counter, &[1, 2, 4], 1.0),
        ];
        let cal = calibrate(&recs, 0.0).unwrap();
        assert_eq!(cal.model.chi_co, 500.0);
        assert_eq!(cal.model.chi_counter, 50.0);
        assert!((cal.model.direction_ratio_db() + 10.0).abs() < 1e-12);
        assert_eq!(cal.model.reference_filter_loss_db, 2.9);
    }

    #[test]
    fn single_core_group_gives_same_chi() {
        let recs = vec![
            group_rec(0.0, 1500.0, Direction::Co, &[1, 2, 4], 1.0),
            group_rec(0.0, 500.0, Direction::Co, &[1], 1.0),
            group_rec(0.0, 150.0, Direction::Counter, &[1, 2, 4], 1.0),
        ];
        let cal = calibrate(&recs, 0.0).unwrap();
        let co: Vec<f64> = cal.groups.iter().filter(|g| g.direction == Direction::Co).map(|g| g.chi).collect();
        assert_eq!(co, vec![500.0, 500.0]);
        assert_eq!(cal.model.chi_co, 500.0);
    }

    #[test]
    fn dark_floor_is_subtracted_and_clamped() {
        let recs = vec![
            group_rec(0.0, 1510.0, Direction::Co, &[1, 2, 4], 1.0),
            group_rec(0.0, 160.0, Direction::Counter, &[1, 2, 4], 1.0),
            group_rec(0.0, 5.0, Direction::Counter, &[1, 2, 4], 1.0),
        ];
        let cal = calibrate(&recs, 10.0).unwrap();
        assert_eq!(cal.model.chi_co, 500.0);
        assert_eq!(cal.model.chi_counter, 25.0);
        assert_eq!(cal.clamped_records, 1);
        assert_eq!(cal.model.dark_floor, 10.0);
    }

    #[test]
    fn calibrate_errors() {
        let co_only = vec![group_rec(0.0, 1500.0, Direction::Co, &[1, 2, 4], 1.0)];
        assert!(matches!(calibrate(&co_only, 0.0), Err(Error::MissingDirection(Direction::Counter))));
        let dead = vec![
            group_rec(0.0, 1500.0, Direction::Co, &[1, 2, 4], 1.0),
            group_rec(0.0, 3.0, Direction::Counter, &[1, 2, 4], 1.0),
        ];
        assert!(matches!(calibrate(&dead, 10.0), Err(Error::DegenerateCalibration(_))));
        let mixed = vec![
            group_rec(0.0, 1500.0, Direction::Co, &[1, 2, 4], 1.0),
            group_rec(3.0, 1500.0, Direction::Co, &[1, 2, 4], 2.0),
            group_rec(0.0, 150.0, Direction::Counter, &[1, 2, 4], 1.0),
        ];
        assert!(matches!(
            calibrate(&mixed, 0.0),
            Err(Error::MixedConfiguration { field: "length_km" })
        ));
    }

    #[test]
    fn filtered_groups_yield_rejection() {
        let mut filtered = group_rec(0.0, 1500.0 * 10f64.powf(-1.01), Direction::Co, &[1, 2, 4], 1.0);
        filtered.filter_chain_loss_db = 5.0;
        let recs = vec![
            group_rec(0.0, 1500.0, Direction::Co, &[1, 2, 4], 1.0),
            group_rec(0.0, 150.0, Direction::Counter, &[1, 2, 4], 1.0),
            filtered,
        ];
        let cal = calibrate(&recs, 0.0).unwrap();
        assert_eq!(cal.model.chi_co, 500.0);
        let bonus = cal.filter_rejection_db(Direction::Co).unwrap();
        assert!((bonus - 8.0).abs() < 1e-9, "{bonus}");
        assert!(cal.filter_rejection_db(Direction::Counter).is_none());
    }

    #[test]
    fn neighbor_check() {
        let t = CoreTopology::hexagonal();
        let ok = vec![rec(0.0, 1.0)];
        assert!(check_neighbor_groups(&ok, &t, CoreId(3)).is_ok());
        assert!(check_neighbor_groups(&ok, &t, CoreId(6)).is_err());
    }

    #[test]
    fn linear_fit_examples() {
        let exact: Vec<_> = [1.0f64, 2.0, 4.0]
            .iter()
            .map(|&mw| rec(10.0 * mw.log10(), 400.0 * mw + 10.0))
            .collect();
        let f = fit_linearity(&exact).unwrap();
        assert!((f.slope - 400.0).abs() < 1e-9);
        assert!((f.intercept - 10.0).abs() < 1e-9);
        assert!((f.r_squared - 1.0).abs() < 1e-12);

        let flat: Vec<_> = [0.0, 3.0, 6.0].iter().map(|&p| rec(p, 77.0)).collect();
        let f = fit_linearity(&flat).unwrap();
        assert!(f.slope.abs() < 1e-12);
        assert_eq!(f.r_squared, 0.0);

        assert!(fit_linearity(&[rec(0.0, 1.0), rec(1.0, 2.0)]).is_err());
        assert!(fit_linearity(&[rec(1.0, 1.0), rec(1.0, 2.0), rec(1.0, 3.0)]).is_err());
    }

    #[test]
    fn prediction_examples() {
        let m = model(500.0, 50.0);
        let p = three_neighbor_plan(0.0);
        assert!((predict_xt_pcr(&m, &p, 1.0, Direction::Co, None).unwrap() - 1500.0).abs() < 1e-9);
        let counter = p.with_classical_direction(Direction::Counter);
        assert!((predict_xt_pcr(&m, &counter, 1.0, Direction::Counter, None).unwrap() - 150.0).abs() < 1e-9);
        // direction must match
        assert_eq!(predict_xt_pcr(&m, &counter, 1.0, Direction::Co, None).unwrap(), 0.0);
        // 500 * 3 * 10^0.3 * 2, evaluated to 10 digits
        let v = predict_xt_pcr(&m, &three_neighbor_plan(3.0), 2.0, Direction::Co, None).unwrap();
        assert!((v - 5985.786945).abs() < 1e-5, "{v}");
        assert!(predict_xt_pcr(&m, &p, 0.0, Direction::Co, None).is_err());
    }

    #[test]
    fn non_neighbor_cores_do_not_contribute() {
        let m = model(500.0, 50.0);
        let mut p = three_neighbor_plan(0.0);
        p.assignments.push(ChannelAssignment::classical(
            CoreId(6),
            Freq::from_ghz(193_350),
            Direction::Co,
            20.0,
        ));
        assert!((predict_xt_pcr(&m, &p, 1.0, Direction::Co, None).unwrap() - 1500.0).abs() < 1e-9);
    }

    #[test]
    fn filter_attenuates_noise() {
        let m = model(500.0, 50.0);
        let p = three_neighbor_plan(0.0);
        let f = FilterSpec::new(2.1, 0.6, 0.0).unwrap();
        let v = predict_xt_pcr(&m, &p, 1.0, Direction::Co, Some(&f)).unwrap();
        assert!((v - 1500.0 * 10f64.powf(-0.21)).abs() < 1e-9);
        assert!(FilterSpec::new(-1.0, 0.6, 0.0).is_err());
        assert!(FilterSpec::new(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn sync_channel_is_noise_free() {
        let m = XtalkModel::<f64>::synthetic_default();
        let with = reference_plan(0.0, Direction::Co);
        let bare = with.without_classical();
        assert_eq!(predict_xt_pcr(&m, &bare, 1.0, Direction::Co, None).unwrap(), 0.0);
    }

    #[test]
    fn model_validation() {
        assert!(XtalkModel::new(0.0, 1.0, 0.0, 0.0).is_err());
        assert!(XtalkModel::new(1.0, -1.0, 0.0, 0.0).is_err());
        assert!(XtalkModel::new(1.0, 1.0, 0.0, -1.0).is_err());
        let m = XtalkModel::<f64>::synthetic_default();
        assert!(m.exceeds_saturation(2e6));
        assert!(!m.exceeds_saturation(10.0));
    }

    #[test]
    fn works_in_f32() {
        let m = XtalkModel::<f32>::synthetic_default();
        let p = reference_plan(0.0_f32, Direction::Co);
        let v = predict_xt_pcr(&m, &p, 1.0, Direction::Co, None).unwrap();
        assert!((v - 45.0).abs() < 1e-3, "{v}");
    }
}
