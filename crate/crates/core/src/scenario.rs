//! Parameter sweeps, length emulation, curve analysis and baseline fitting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fibergrid::{reference_plan, Direction, Role};
use crate::qkdrate::{secure_key_rate, DecoyParams, DetectorSpec, LinkResult, LinkScenario};
use crate::scalar::{linear_to_db, Scalar};
use crate::xtmodel::{FilterSpec, XtalkModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    LengthKm,
    /// Fan-in port power applied to every classical core.
    PowerDbm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub label: String,
    pub direction: Direction,
    pub extra_filter: bool,
}

impl Variant {
    pub fn new(label: impl Into<String>, direction: Direction, extra_filter: bool) -> Self {
        Self {
            label: label.into(),
            direction,
            extra_filter,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec<T> {
    pub variable: SweepVariable,
    pub start: T,
    pub stop: T,
    pub step: T,
    /// Everything not swept. Its `extra_filter` is the filter that variants
    /// asking for one get.
    pub template: LinkScenario<T>,
    pub variants: Vec<Variant>,
}

impl<T: Scalar> SweepSpec<T> {
    pub fn check(&self) -> Result<()> {
        if !(self.step > T::zero()) {
            return Err(Error::domain(format!("sweep step must be positive, got {}", self.step)));
        }
        if !(self.start <= self.stop) {
            return Err(Error::domain(format!(
                "sweep start {} is after stop {}",
                self.start, self.stop
            )));
        }
        if self.variants.iter().any(|v| v.extra_filter) && self.template.extra_filter.is_none() {
            return Err(Error::domain("a variant asks for the extra filter but none is configured"));
        }
        Ok(())
    }

    /// Grid points `start + i·step` up to `stop`.
    pub fn points(&self) -> Vec<T> {
        // tolerate stop landing a rounding error short of a grid point
        let span = (self.stop - self.start) / self.step;
        let count = (span + T::lit(1e-9)).floor().to_usize().unwrap_or(0);
        (0..=count)
            .map(|i| self.start + T::lit(i as f64) * self.step)
            .collect()
    }

    /// The scenario evaluated at `x` for `variant`.
    pub fn scenario_at(&self, variant: &Variant, x: T) -> LinkScenario<T> {
        let mut s = self.template.clone();
        s.direction = variant.direction;
        if !variant.extra_filter {
            s.extra_filter = None;
        }
        match self.variable {
            SweepVariable::LengthKm => s.length_km = x,
            SweepVariable::PowerDbm => s.plan = s.plan.with_port_power(x),
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curve<T> {
    pub label: String,
    pub points: Vec<(T, LinkResult<T>)>,
}

impl<T: Scalar> Curve<T> {
    pub fn skr_series(&self) -> Vec<(T, T)> {
        self.points.iter().map(|(x, r)| (*x, r.skr)).collect()
    }
}

/// Evaluates every variant over the sweep grid. Points are computed in
/// parallel and returned in grid order.
pub fn run_sweep<T: Scalar>(
    spec: &SweepSpec<T>,
    model: &XtalkModel<T>,
    params: &DecoyParams<T>,
) -> Result<Vec<Curve<T>>> {
    spec.check()?;
    let xs = spec.points();
    spec.variants
        .iter()
        .map(|variant| {
            let points = xs
                .par_iter()
                .map(|&x| {
                    secure_key_rate(&spec.scenario_at(variant, x), model, params)
                        .map(|r| (x, r))
                        .map_err(|e| Error::AtPoint {
                            x: x.to_f64_lossy(),
                            source: Box::new(e),
                        })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Curve {
                label: variant.label.clone(),
                points,
            })
        })
        .collect()
}

/// How the variable attenuator stands in for the extra fiber.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmulationConvention {
    /// Attenuator covers only the fiber beyond the base spool.
    #[default]
    Incremental,
    /// Attenuator covers the full target length; the spool's own
    /// attenuation is treated as part of the back-to-back baseline.
    FullSpan,
}

/// Attenuator setting and classical power boost (both dB) that make a
/// `base_km` spool behave like `target_km` of fiber: the attenuator adds the
/// missing fiber loss and the boost scales crosstalk, which grows linearly
/// with length, by `target/base`.
pub fn emulate_length<T: Scalar>(target_km: T, base_km: T, attenuation_db_per_km: T) -> Result<(T, T)> {
    emulate_length_with(target_km, base_km, attenuation_db_per_km, EmulationConvention::Incremental)
}

pub fn emulate_length_with<T: Scalar>(
    target_km: T,
    base_km: T,
    attenuation_db_per_km: T,
    convention: EmulationConvention,
) -> Result<(T, T)> {
    if !(base_km > T::zero()) {
        return Err(Error::domain(format!("base length must be positive, got {base_km}")));
    }
    if !(target_km >= base_km) {
        return Err(Error::domain(format!(
            "target length {target_km} km is shorter than the {base_km} km base"
        )));
    }
    let voa = match convention {
        EmulationConvention::Incremental => attenuation_db_per_km * (target_km - base_km),
        EmulationConvention::FullSpan => attenuation_db_per_km * target_km,
    };
    Ok((voa, linear_to_db(target_km / base_km)))
}

/// `scenario` rebuilt on a `base_km` spool with the attenuator and power
/// boost from [`emulate_length`].
pub fn emulated_scenario<T: Scalar>(scenario: &LinkScenario<T>, base_km: T) -> Result<LinkScenario<T>> {
    let (voa, boost) = emulate_length(scenario.length_km, base_km, scenario.attenuation_db_per_km)?;
    let mut s = scenario.clone();
    s.length_km = base_km;
    s.fixed_losses_db = s.fixed_losses_db + voa;
    for a in s.plan.assignments.iter_mut().filter(|a| a.role == Role::Classical) {
        a.launch_power = a.launch_power.map(|p| p + boost);
    }
    Ok(s)
}

fn crossover_of_series<T: Scalar>(a: &[(T, T)], b: &[(T, T)]) -> Result<Option<T>> {
    if a.len() != b.len() || a.iter().zip(b).any(|(p, q)| p.0 != q.0) {
        return Err(Error::domain("curves do not share an x grid"));
    }
    let diffs: Vec<(T, T)> = a.iter().zip(b).map(|(p, q)| (p.0, p.1 - q.1)).collect();
    let mut last: Option<(T, T)> = None;
    let mut first_zero: Option<T> = None;
    for &(x, d) in &diffs {
        if d == T::zero() {
            if last.is_some() && first_zero.is_none() {
                first_zero = Some(x);
            }
            continue;
        }
        if let Some((x0, d0)) = last {
            if d.signum() != d0.signum() {
                if let Some(z) = first_zero {
                    return Ok(Some(z));
                }
                return Ok(Some(x0 + (x - x0) * d0 / (d0 - d)));
            }
        }
        last = Some((x, d));
        first_zero = None;
    }
    Ok(None)
}

/// Smallest x where `a.skr - b.skr` changes sign, linearly interpolated
/// between the bracketing grid points.
pub fn find_crossover<T: Scalar>(a: &Curve<T>, b: &Curve<T>) -> Result<Option<T>> {
    crossover_of_series(&a.skr_series(), &b.skr_series())
}

/// [`find_crossover`] on bare `(x, skr)` series.
pub fn find_series_crossover<T: Scalar>(a: &[(T, T)], b: &[(T, T)]) -> Result<Option<T>> {
    crossover_of_series(a, b)
}

/// Largest x with a positive key rate, or 0.
pub fn max_reach<T: Scalar>(curve: &Curve<T>) -> T {
    series_max_reach(&curve.skr_series())
}

pub fn series_max_reach<T: Scalar>(series: &[(T, T)]) -> T {
    series
        .iter()
        .filter(|(_, skr)| *skr > T::zero())
        .map(|(x, _)| *x)
        .fold(T::zero(), T::max)
}

/// Detector misalignment error and fixed loss reproducing a measured
/// back-to-back key rate and QBER.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineFit<T> {
    pub e_detector: T,
    pub fixed_losses_db: T,
    pub iterations: usize,
}

const E_DETECTOR_RANGE: (f64, f64) = (0.0, 0.1);
const LOSS_RANGE_DB: (f64, f64) = (0.0, 30.0);
const MAX_OUTER_ITERATIONS: usize = 100;
const BISECTION_STEPS: usize = 200;

/// Solves for `(e_detector, fixed_losses)` by alternating bisections: QBER
/// rises monotonically with `e_detector` at fixed loss, and the key rate
/// falls monotonically with loss at fixed `e_detector`.
///
/// The scenario must carry no classical channels.
pub fn calibrate_baseline<T: Scalar>(
    target_skr: T,
    target_qber: T,
    scenario: &LinkScenario<T>,
    params: &DecoyParams<T>,
) -> Result<BaselineFit<T>> {
    if !(target_skr > T::zero() && target_qber > T::zero() && target_qber < T::lit(0.5)) {
        return Err(Error::domain("baseline targets must be positive (and QBER below 0.5)"));
    }
    if scenario.plan.channels(Role::Classical).next().is_some() {
        return Err(Error::domain("baseline calibration needs a plan without classical channels"));
    }
    scenario.check()?;
    params.check()?;
    let model = XtalkModel::synthetic_default();
    let eval = |e_d: T, loss: T| -> Result<LinkResult<T>> {
        let mut s = scenario.clone();
        s.fixed_losses_db = loss;
        let p = DecoyParams {
            e_detector: e_d,
            ..*params
        };
        secure_key_rate(&s, &model, &p)
    };
    let (ed_lo, ed_hi) = (T::lit(E_DETECTOR_RANGE.0), T::lit(E_DETECTOR_RANGE.1));
    let (loss_lo, loss_hi) = (T::lit(LOSS_RANGE_DB.0), T::lit(LOSS_RANGE_DB.1));
    // e_detector must stay below 0.5 for the params check; the range does
    let ed_hi = ed_hi.min(T::lit(0.5) - T::epsilon());

    let mut e_d = params.e_detector.max(ed_lo).min(ed_hi);
    let mut loss = scenario.fixed_losses_db.max(loss_lo).min(loss_hi);
    let tol = T::lit(1e-9);
    for iteration in 1..=MAX_OUTER_ITERATIONS {
        e_d = bisect(ed_lo, ed_hi, |x| Ok(eval(x, loss)?.e_mu - target_qber), true).map_err(|e| {
            fail(e, format!("no e_detector in [0, 0.1] gives QBER {target_qber} at {loss} dB"))
        })?;
        loss = bisect(loss_lo, loss_hi, |x| Ok(eval(e_d, x)?.skr - target_skr), false).map_err(|e| {
            fail(e, format!("no fixed loss in [0, 30] dB gives {target_skr} b/s at e_d = {e_d}"))
        })?;
        let r = eval(e_d, loss)?;
        let skr_err = ((r.skr - target_skr) / target_skr).abs();
        let qber_err = ((r.e_mu - target_qber) / target_qber).abs();
        if skr_err < tol && qber_err < tol {
            return Ok(BaselineFit {
                e_detector: e_d,
                fixed_losses_db: loss,
                iterations: iteration,
            });
        }
    }
    let r = eval(e_d, loss)?;
    let limit = T::lit(1e-3);
    if ((r.skr - target_skr) / target_skr).abs() < limit && ((r.e_mu - target_qber) / target_qber).abs() < limit {
        return Ok(BaselineFit {
            e_detector: e_d,
            fixed_losses_db: loss,
            iterations: MAX_OUTER_ITERATIONS,
        });
    }
    Err(Error::CalibrationFailure(format!(
        "did not converge in {MAX_OUTER_ITERATIONS} iterations (skr {}, qber {})",
        r.skr, r.e_mu
    )))
}

fn fail(e: Error, msg: String) -> Error {
    match e {
        Error::CalibrationFailure(_) => Error::CalibrationFailure(msg),
        other => other,
    }
}

/// Root of a monotone `f` on `[lo, hi]`; `increasing` gives its direction.
fn bisect<T: Scalar>(lo: T, hi: T, f: impl Fn(T) -> Result<T>, increasing: bool) -> Result<T> {
    let (f_lo, f_hi) = (f(lo)?, f(hi)?);
    let sign = if increasing { T::one() } else { -T::one() };
    if sign * f_lo > T::zero() || sign * f_hi < T::zero() {
        return Err(Error::CalibrationFailure(String::new()));
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..BISECTION_STEPS {
        let m = (a + b) / T::lit(2.0);
        if m <= a || m >= b {
            break;
        }
        if sign * f(m)? < T::zero() {
            a = m;
        } else {
            b = m;
        }
    }
    Ok((a + b) / T::lit(2.0))
}

/// The field-trial link: 1 km of fiber at 0.23 dB/km, the reference plan
/// with classical ports at `port_dbm`, the 20 MHz gated detector, a 50 MHz
/// source and the 2.1 dB extra filter (with synthetic rejection) available to
/// variants that ask for it. `fixed_losses_db` starts at the 2.9 dB
/// demultiplexer loss and is normally replaced by [`calibrate_baseline`].
pub fn field_scenario<T: Scalar>(port_dbm: T, direction: Direction) -> LinkScenario<T> {
    LinkScenario {
        length_km: T::one(),
        attenuation_db_per_km: T::lit(0.23),
        fixed_losses_db: T::lit(2.9),
        plan: reference_plan(port_dbm, direction),
        direction,
        extra_filter: Some(FilterSpec::synthetic_default()),
        detector: DetectorSpec::default(),
        system_clock_hz: T::lit(50e6),
    }
}

/// Back-to-back key rate and QBER measured without classical traffic.
pub const FIELD_BASELINE_SKR_BPS: f64 = 10.9e3;
pub const FIELD_BASELINE_QBER: f64 = 0.0062;

/// Decoy parameters and field scenario with `e_detector` and fixed loss fitted
/// to the back-to-back measurement.
pub fn calibrated_field_setup<T: Scalar>() -> Result<(LinkScenario<T>, DecoyParams<T>, BaselineFit<T>)> {
    let mut scenario = field_scenario(T::zero(), Direction::Counter);
    let params = DecoyParams::default();
    let bare = LinkScenario {
        plan: scenario.plan.without_classical(),
        extra_filter: None,
        ..scenario.clone()
    };
    let fit = calibrate_baseline(
        T::lit(FIELD_BASELINE_SKR_BPS),
        T::lit(FIELD_BASELINE_QBER),
        &bare,
        &params,
    )?;
    scenario.fixed_losses_db = fit.fixed_losses_db;
    let params = DecoyParams {
        e_detector: fit.e_detector,
        ..params
    };
    Ok((scenario, params, fit))
}
