//! Decoy-state BB84 key rate with crosstalk as background noise.
//!
//! Gains and error rates follow the usual Poissonian channel model; the
//! single-photon yield and error are bounded with the vacuum + weak decoy
//! estimator, using the modeled background yield directly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fibergrid::{validate_plan, ChannelPlan, Direction};
use crate::scalar::{loss_to_transmission, Scalar};
use crate::xtmodel::{predict_xt_pcr, FilterSpec, XtalkModel};

/// Identifier of the decoy estimator, recorded in output metadata.
pub const DECOY_VARIANT: &str = "vacuum-weak-decoy/modeled-y0";

/// Error rate of a background (vacuum) detection.
pub const E0: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoyParams<T> {
    /// Signal mean photon number.
    pub mu: T,
    /// Decoy mean photon number.
    pub nu: T,
    /// Signal : decoy : vacuum sending ratio.
    pub state_ratio: [u32; 3],
    /// Error-correction inefficiency (≥ 1).
    pub f_ec: T,
    /// Intrinsic misalignment error probability.
    pub e_detector: T,
    /// Basis-sift factor.
    pub q: T,
}

impl<T: Scalar> DecoyParams<T> {
    pub fn check(&self) -> Result<()> {
        if !(self.nu > T::zero() && self.nu < self.mu) {
            return Err(Error::domain(format!(
                "decoy intensity must satisfy 0 < nu < mu (mu = {}, nu = {})",
                self.mu, self.nu
            )));
        }
        if self.state_ratio.iter().any(|&r| r == 0) {
            return Err(Error::domain("state ratio entries must be positive"));
        }
        if !(self.f_ec >= T::one()) {
            return Err(Error::domain(format!("f_ec must be at least 1, got {}", self.f_ec)));
        }
        if !(self.e_detector >= T::zero() && self.e_detector < T::lit(0.5)) {
            return Err(Error::domain(format!(
                "e_detector must lie in [0, 0.5), got {}",
                self.e_detector
            )));
        }
        if !(self.q > T::zero() && self.q <= T::one()) {
            return Err(Error::domain(format!("sift factor must lie in (0, 1], got {}", self.q)));
        }
        Ok(())
    }

    /// Fraction of pulses sent as signal states.
    pub fn signal_fraction(&self) -> T {
        let total: u32 = self.state_ratio.iter().sum();
        T::lit(self.state_ratio[0] as f64) / T::lit(total as f64)
    }
}

impl<T: Scalar> Default for DecoyParams<T> {
    /// mu = 0.6, nu = 0.2, 14:1:1, f_ec = 1.16, q = 1/2. `e_detector` is a
    /// placeholder until a baseline calibration replaces it.
    fn default() -> Self {
        Self {
            mu: T::lit(0.6),
            nu: T::lit(0.2),
            state_ratio: [14, 1, 1],
            f_ec: T::lit(1.16),
            e_detector: T::lit(0.006),
            q: T::lit(0.5),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec<T> {
    pub gate_rate_hz: T,
    pub efficiency: T,
    pub dark_rate_cps: T,
    pub gate_width_ns: T,
    /// Gate rate of the detector the crosstalk model was calibrated with.
    pub calibration_gate_rate_hz: T,
}

impl<T: Scalar> DetectorSpec<T> {
    pub fn check(&self) -> Result<()> {
        if !(self.efficiency > T::zero() && self.efficiency <= T::one()) {
            return Err(Error::domain(format!(
                "detector efficiency must lie in (0, 1], got {}",
                self.efficiency
            )));
        }
        for (name, v) in [
            ("gate rate", self.gate_rate_hz),
            ("dark rate", self.dark_rate_cps),
            ("gate width", self.gate_width_ns),
            ("calibration gate rate", self.calibration_gate_rate_hz),
        ] {
            if !(v > T::zero() && v.is_finite()) {
                return Err(Error::domain(format!("detector {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

impl<T: Scalar> Default for DetectorSpec<T> {
    /// Gated InGaAs SPD: 20 MHz, 10 % efficiency, 10 Hz dark counts, 2.1 ns gate.
    fn default() -> Self {
        Self {
            gate_rate_hz: T::lit(20e6),
            efficiency: T::lit(0.1),
            dark_rate_cps: T::lit(10.0),
            gate_width_ns: T::lit(2.1),
            calibration_gate_rate_hz: T::lit(20e6),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkScenario<T> {
    pub length_km: T,
    pub attenuation_db_per_km: T,
    /// Fan-in/out, demultiplexer and receiver losses, excluding any extra filter.
    pub fixed_losses_db: T,
    pub plan: ChannelPlan<T>,
    /// Propagation direction applied to every classical channel in `plan`.
    pub direction: Direction,
    pub extra_filter: Option<FilterSpec<T>>,
    pub detector: DetectorSpec<T>,
    pub system_clock_hz: T,
}

impl<T: Scalar> LinkScenario<T> {
    pub fn check(&self) -> Result<()> {
        if !(self.length_km > T::zero()) {
            return Err(Error::domain(format!("length must be positive, got {}", self.length_km)));
        }
        if !(self.attenuation_db_per_km > T::zero()) {
            return Err(Error::domain(format!(
                "attenuation must be positive, got {}",
                self.attenuation_db_per_km
            )));
        }
        if !(self.fixed_losses_db >= T::zero()) {
            return Err(Error::domain("fixed losses must be non-negative"));
        }
        if !(self.system_clock_hz > T::zero()) {
            return Err(Error::domain("system clock must be positive"));
        }
        self.detector.check()
    }

    /// Total loss between transmitter and detector, dB.
    pub fn total_loss_db(&self) -> T {
        let filter = self.extra_filter.map_or(T::zero(), |f| f.insertion_loss_db);
        self.attenuation_db_per_km * self.length_km + self.fixed_losses_db + filter
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkResult<T> {
    pub eta: T,
    pub y0: T,
    pub q_mu: T,
    pub e_mu: T,
    pub q_nu: T,
    pub e_nu: T,
    pub y1_lower: T,
    pub e1_upper: T,
    /// Single-photon gain of the signal state.
    pub q1: T,
    /// Secure key rate, bits/s.
    pub skr: T,
    pub xt_pcr: T,
    /// Crosstalk above the plausible detector operating range.
    pub saturation_warning: bool,
}

/// `H₂(x)` in bits, with `H₂(0) = H₂(1) = 0`.
pub fn binary_entropy<T: Scalar>(x: T) -> Result<T> {
    if !(x >= T::zero() && x <= T::one()) {
        return Err(Error::domain(format!("binary entropy argument {x} outside [0, 1]")));
    }
    if x == T::zero() || x == T::one() {
        return Ok(T::zero());
    }
    let y = T::one() - x;
    Ok(-x * x.log2() - y * y.log2())
}

/// Channel transmission times detector efficiency.
pub fn transmittance<T: Scalar>(scenario: &LinkScenario<T>) -> T {
    loss_to_transmission(scenario.total_loss_db()) * scenario.detector.efficiency
}

/// Per-gate probability of a click with no signal photon: dark counts at the
/// operating gate rate plus crosstalk counts at the calibration gate rate.
pub fn background_yield<T: Scalar>(detector: &DetectorSpec<T>, xt_pcr: T) -> Result<T> {
    if !(xt_pcr >= T::zero()) {
        return Err(Error::domain(format!("crosstalk count rate must be non-negative, got {xt_pcr}")));
    }
    Ok(detector.dark_rate_cps / detector.gate_rate_hz + xt_pcr / detector.calibration_gate_rate_hz)
}

/// Gain and QBER of a coherent state with mean photon number `mean_photon`.
pub fn gain_and_qber<T: Scalar>(mean_photon: T, eta: T, y0: T, e_detector: T) -> (T, T) {
    let signal = T::one() - (-eta * mean_photon).exp();
    let gain = y0 + signal;
    if gain == T::zero() {
        return (gain, T::lit(E0));
    }
    let errors = T::lit(E0) * y0 + e_detector * signal;
    (gain, errors / gain)
}

/// Lower bound on the single-photon yield, clamped at 0.
pub fn y1_lower_bound<T: Scalar>(params: &DecoyParams<T>, q_mu: T, q_nu: T, y0: T) -> Result<T> {
    let (mu, nu) = (params.mu, params.nu);
    let denom = mu * nu - nu * nu;
    if !(denom > T::zero()) {
        return Err(Error::domain(format!(
            "decoy bound needs nu < mu (mu = {mu}, nu = {nu})"
        )));
    }
    let mu2 = mu * mu;
    let bracket =
        q_nu * nu.exp() - q_mu * mu.exp() * (nu * nu / mu2) - ((mu2 - nu * nu) / mu2) * y0;
    Ok((mu / denom * bracket).max(T::zero()))
}

/// Upper bound on the single-photon error rate, clamped to `[0, ½]`.
///
/// `None` when the yield bound is zero: no key can be extracted.
pub fn e1_upper_bound<T: Scalar>(params: &DecoyParams<T>, q_nu: T, e_nu: T, y0: T, y1_lower: T) -> Option<T> {
    if !(y1_lower > T::zero()) {
        return None;
    }
    let numer = e_nu * q_nu * params.nu.exp() - T::lit(E0) * y0;
    let e1 = numer / (y1_lower * params.nu);
    Some(e1.max(T::zero()).min(T::lit(E0)))
}

/// Secret bits per pulse from the signal-state statistics, clamped at 0.
pub fn key_rate_per_pulse<T: Scalar>(params: &DecoyParams<T>, q_mu: T, e_mu: T, q1: T, e1: T) -> Result<T> {
    let leak = q_mu * params.f_ec * binary_entropy(e_mu)?;
    let secret = q1 * (T::one() - binary_entropy(e1)?);
    let r = params.q * params.signal_fraction() * (secret - leak);
    Ok(r.max(T::zero()))
}

/// Runs the full noise → gains → bounds → key-rate pipeline for one scenario.
pub fn secure_key_rate<T: Scalar>(
    scenario: &LinkScenario<T>,
    model: &XtalkModel<T>,
    params: &DecoyParams<T>,
) -> Result<LinkResult<T>> {
    scenario.check()?;
    model.check()?;
    params.check()?;
    let violations = validate_plan(&scenario.plan);
    if !violations.is_empty() {
        return Err(Error::InvalidPlan(violations));
    }
    let plan = scenario.plan.with_classical_direction(scenario.direction);
    let xt_pcr = predict_xt_pcr(
        model,
        &plan,
        scenario.length_km,
        scenario.direction,
        scenario.extra_filter.as_ref(),
    )?;
    let y0 = background_yield(&scenario.detector, xt_pcr)?;
    let eta = transmittance(scenario);
    Ok(evaluate_channel(params, eta, y0, xt_pcr, scenario.system_clock_hz, model))
}

fn evaluate_channel<T: Scalar>(
    params: &DecoyParams<T>,
    eta: T,
    y0: T,
    xt_pcr: T,
    clock_hz: T,
    model: &XtalkModel<T>,
) -> LinkResult<T> {
    let (q_mu, e_mu) = gain_and_qber(params.mu, eta, y0, params.e_detector);
    let (q_nu, e_nu) = gain_and_qber(params.nu, eta, y0, params.e_detector);
    // params were checked by the caller, so the bound cannot fail
    let y1_lower = y1_lower_bound(params, q_mu, q_nu, y0).unwrap_or(T::zero());
    let q1 = y1_lower * params.mu * (-params.mu).exp();
    let (e1_upper, skr) = match e1_upper_bound(params, q_nu, e_nu, y0, y1_lower) {
        Some(e1) => {
            let r = key_rate_per_pulse(params, q_mu, e_mu.min(T::one()), q1, e1).unwrap_or(T::zero());
            (e1, r * clock_hz)
        }
        None => (T::lit(E0), T::zero()),
    };
    LinkResult {
        eta,
        y0,
        q_mu,
        e_mu,
        q_nu,
        e_nu,
        y1_lower,
        e1_upper,
        q1,
        skr,
        xt_pcr,
        saturation_warning: model.exceeds_saturation(xt_pcr),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fibergrid::reference_plan;

    fn scenario(length: f64, fixed: f64, filter: Option<FilterSpec<f64>>) -> LinkScenario<f64> {
        LinkScenario {
            length_km: length,
            attenuation_db_per_km: 0.23,
            fixed_losses_db: fixed,
            plan: reference_plan(0.0, Direction::Counter),
            direction: Direction::Counter,
            extra_filter: filter,
            detector: DetectorSpec::default(),
            system_clock_hz: 50e6,
        }
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(binary_entropy(0.5_f64).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0_f64).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0_f64).unwrap(), 0.0);
        // H(0.11) = 0.499915958...
        assert!((binary_entropy(0.11_f64).unwrap() - 0.4999).abs() < 1e-4);
        assert!(binary_entropy(1.5_f64).is_err());
        assert!(binary_entropy(-0.1_f64).is_err());
        assert!(binary_entropy(f64::NAN).is_err());
    }

    #[test]
    fn transmittance_examples() {
        // 10^(-0.98) * 0.1
        let t = transmittance(&scenario(30.0, 2.9, None));
        assert!((t - 0.010471285).abs() < 1e-6, "{t}");
        let mut lossless = scenario(1e-9, 0.0, None);
        lossless.detector.efficiency = 1.0;
        assert!((transmittance(&lossless) - 1.0).abs() < 1e-9);
        let filt = FilterSpec::new(2.1, 0.6, 0.0).unwrap();
        let t = transmittance(&scenario(1.0, 2.9, Some(filt)));
        assert!((t - 0.030).abs() < 1e-3, "{t}");
        let t2 = transmittance(&scenario(1.0, 5.0, None));
        assert!((t - t2).abs() < 1e-15);
    }

    #[test]
    fn background_yield_examples() {
        let d = DetectorSpec::<f64>::default();
        assert!((background_yield(&d, 0.0).unwrap() - 5e-7).abs() < 1e-18);
        assert!((background_yield(&d, 2000.0).unwrap() - 1.005e-4).abs() < 1e-7);
        let quiet = DetectorSpec {
            dark_rate_cps: 0.0,
            ..d
        };
        assert_eq!(background_yield(&quiet, 0.0).unwrap(), 0.0);
        assert!(background_yield(&d, -1.0).is_err());
    }

    #[test]
    fn gain_examples() {
        let (q, e) = gain_and_qber(0.6, 0.0, 1e-5, 0.01);
        assert_eq!(q, 1e-5);
        assert_eq!(e, 0.5);
        let (q, e) = gain_and_qber(0.6_f64, 0.1, 1e-5, 0.01);
        assert!((q - 0.0582455).abs() < 1e-6, "{q}");
        assert!((e - 0.010084).abs() < 1e-6, "{e}");
        for (m, eta) in [(0.6, 0.3), (0.2, 1e-4), (0.9, 1.0)] {
            assert_eq!(gain_and_qber(m, eta, 0.0, 0.0).1, 0.0);
        }
        assert_eq!(gain_and_qber(0.6, 0.0, 0.0, 0.01), (0.0, 0.5));
    }

    #[test]
    fn y1_examples() {
        let p = DecoyParams::<f64>::default();
        let qm = 1.0 - (-0.6f64).exp();
        let qn = 1.0 - (-0.2f64).exp();
        let y1 = y1_lower_bound(&p, qm, qn, 0.0).unwrap();
        assert!((y1 - 0.97542).abs() < 1e-4, "{y1}");
        assert!(y1 <= 1.0);
        assert_eq!(y1_lower_bound(&p, 0.0, 0.0, 0.0).unwrap(), 0.0);
        // a signal gain far above the decoy gain drives the bracket negative
        assert_eq!(y1_lower_bound(&p, 0.5, 1e-4, 0.0).unwrap(), 0.0);
        let bad = DecoyParams { nu: 0.6, ..p };
        assert!(y1_lower_bound(&bad, qm, qn, 0.0).is_err());
    }

    #[test]
    fn e1_examples() {
        let p = DecoyParams::<f64>::default();
        let (qn, en) = gain_and_qber(0.2, 0.01, 0.0, 0.0);
        let (qm, _) = gain_and_qber(0.6, 0.01, 0.0, 0.0);
        let y1 = y1_lower_bound(&p, qm, qn, 0.0).unwrap();
        assert_eq!(e1_upper_bound(&p, qn, en, 0.0, y1), Some(0.0));
        assert_eq!(e1_upper_bound(&p, qn, en, 0.0, 0.0), None);
        // background subtraction exceeding the decoy error count
        assert_eq!(e1_upper_bound(&p, 1e-3, 1e-4, 1e-3, 0.01), Some(0.0));
    }

    #[test]
    fn dead_link_has_zero_key() {
        let r = secure_key_rate(
            &scenario(400.0, 2.9, None),
            &XtalkModel::synthetic_default(),
            &DecoyParams::default(),
        )
        .unwrap();
        assert_eq!(r.skr, 0.0);
        assert!(r.e_mu <= 0.5);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let m = XtalkModel::synthetic_default();
        let p = DecoyParams::default();
        let mut s = scenario(1.0, 2.9, None);
        s.plan.quantum_core = crate::fibergrid::CoreId(1);
        assert!(matches!(secure_key_rate(&s, &m, &p), Err(Error::InvalidPlan(_))));
        let bad_model = XtalkModel {
            chi_co: 0.0,
            ..m
        };
        assert!(secure_key_rate(&scenario(1.0, 2.9, None), &bad_model, &p).is_err());
        assert!(secure_key_rate(&scenario(0.0, 2.9, None), &m, &p).is_err());
        let bad_params = DecoyParams { f_ec: 0.9, ..p };
        assert!(secure_key_rate(&scenario(1.0, 2.9, None), &m, &bad_params).is_err());
    }

    #[test]
    fn signal_fraction_from_ratio() {
        let p = DecoyParams::<f64>::default();
        assert_eq!(p.signal_fraction(), 14.0 / 16.0);
    }

    #[test]
    fn f32_pipeline_tracks_f64() {
        let r64 = secure_key_rate(
            &scenario(10.0, 16.7, None),
            &XtalkModel::synthetic_default(),
            &DecoyParams::default(),
        )
        .unwrap();
        let s32 = LinkScenario {
            length_km: 10.0_f32,
            attenuation_db_per_km: 0.23,
            fixed_losses_db: 16.7,
            plan: reference_plan(0.0_f32, Direction::Counter),
            direction: Direction::Counter,
            extra_filter: None,
            detector: DetectorSpec::default(),
            system_clock_hz: 50e6,
        };
        let r32 = secure_key_rate(&s32, &XtalkModel::synthetic_default(), &DecoyParams::default()).unwrap();
        assert!(((r32.skr as f64) - r64.skr).abs() / r64.skr < 1e-3);
    }
}
