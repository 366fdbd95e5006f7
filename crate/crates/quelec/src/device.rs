//! Minimal flux-tunable two-level qubit with dispersive readout, plus the
//! ultra-stable bias voltage generator (BVG) that sets its operating point.
//!
//! The qubit-frequency-versus-flux curve is a smooth periodic stand-in with a
//! minimum at the sweet spot; evolution is exact piecewise-constant rotation
//! (Rodrigues form) with exponential T1/T2* damping per segment; readout is a
//! projective collapse followed by an IF waveform whose amplitude and phase
//! come from the dispersive resonator response.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::substream;
use crate::QubitState;

/// Longest driven segment the unitary/damping split is allowed to span.
pub const MAX_DRIVEN_STEP_S: f64 = 1e-9;
/// BVG DAC resolution.
pub const BVG_RESOLUTION_BITS: u32 = 20;
/// BVG output range, +-volts.
pub const BVG_RANGE_V: f64 = 5.0;

#[derive(Debug, Error, PartialEq)]
pub enum DeviceError {
    #[error("driven segment of {0} s exceeds the 1 ns accuracy guard")]
    StepTooLong(f64),
    #[error("bias {0} V outside the +-{BVG_RANGE_V} V BVG range")]
    BiasOutOfRange(f64),
    #[error("device params invalid: {0}")]
    BadParams(String),
    #[error("readout duration must be > 0, got {0} s")]
    BadReadoutDuration(f64),
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// Two-level device and readout parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QubitParams {
    /// Minimum qubit frequency, at the flux sweet spot.
    pub f_min_hz: f64,
    /// Peak-to-peak modulation of the frequency-vs-bias curve (model
    /// parameter; the maximum frequency is `f_min + modulation`).
    pub modulation_hz: f64,
    pub flux_period_volts: f64,
    pub sweet_spot_volts: f64,
    pub t1_s: f64,
    pub t2_star_s: f64,
    /// Readout resonator frequency, linewidth and dispersive shift.
    pub f_r_hz: f64,
    pub kappa_hz: f64,
    pub chi_hz: f64,
    /// Bias line resistance and mutual inductance.
    pub r_ohm: f64,
    pub m_henry: f64,
    /// Rabi frequency per unit drive amplitude.
    pub rabi_hz_per_unit: f64,
    /// Probability that an immediate re-measurement reproduces the outcome.
    pub qnd_fidelity: f64,
}

impl Default for QubitParams {
    fn default() -> QubitParams {
        QubitParams {
            f_min_hz: 1.82e9,
            modulation_hz: 2.5e9,
            flux_period_volts: 1.0,
            sweet_spot_volts: 0.0,
            t1_s: 90e-6,
            t2_star_s: 19e-6,
            f_r_hz: 7.0e9,
            kappa_hz: 1e6,
            chi_hz: 0.5e6,
            r_ohm: 1e3,
            m_henry: 2e-12,
            rabi_hz_per_unit: 20e6,
            qnd_fidelity: 1.0,
        }
    }
}

impl QubitParams {
    pub fn validate(&self) -> Result<(), DeviceError> {
        if self.t2_star_s > 2.0 * self.t1_s {
            return Err(DeviceError::BadParams(format!(
                "T2* = {} s exceeds 2 T1 = {} s",
                self.t2_star_s,
                2.0 * self.t1_s
            )));
        }
        if self.kappa_hz <= 0.0 || self.chi_hz <= 0.0 {
            return Err(DeviceError::BadParams(format!(
                "kappa and chi must be > 0, got {} and {}",
                self.kappa_hz, self.chi_hz
            )));
        }
        if !(0.0..=1.0).contains(&self.qnd_fidelity) {
            return Err(DeviceError::BadParams(format!(
                "QND fidelity must be in [0, 1], got {}",
                self.qnd_fidelity
            )));
        }
        Ok(())
    }
}

/// Qubit frequency at a bias voltage: a smooth periodic curve with its
/// minimum `f_min` at the sweet spot, symmetric about it.
pub fn qubit_frequency(bias_volts: f64, params: &QubitParams) -> f64 {
    let phase =
        std::f64::consts::TAU * (bias_volts - params.sweet_spot_volts) / params.flux_period_volts;
    params.f_min_hz + params.modulation_hz * (1.0 - phase.cos()) / 2.0
}

/// df/dV of the frequency-vs-bias curve; zero at the sweet spot.
pub fn qubit_frequency_slope(bias_volts: f64, params: &QubitParams) -> f64 {
    let phase =
        std::f64::consts::TAU * (bias_volts - params.sweet_spot_volts) / params.flux_period_volts;
    params.modulation_hz * std::f64::consts::PI / params.flux_period_volts * phase.sin()
}

/// Complex S21 of the readout resonator: a Lorentzian dip whose center sits
/// at `f_r - chi` for ground and `f_r + chi` for excited.
pub fn resonator_response(probe_hz: f64, state: QubitState, params: &QubitParams) -> Complex64 {
    let center = match state {
        QubitState::Ground => params.f_r_hz - params.chi_hz,
        QubitState::Excited => params.f_r_hz + params.chi_hz,
    };
    let detuning = probe_hz - center;
    let half_kappa = params.kappa_hz / 2.0;
    // 1 - (k/2)/(k/2 + i df) = i df / (k/2 + i df)
    Complex64::new(0.0, detuning) / Complex64::new(half_kappa, detuning)
}

// ---------------------------------------------------------------------------
// State and evolution
// ---------------------------------------------------------------------------

/// Bloch vector; z = +1 is the ground state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bloch {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Bloch {
    pub fn ground() -> Bloch {
        Bloch { x: 0.0, y: 0.0, z: 1.0 }
    }

    pub fn excited() -> Bloch {
        Bloch { x: 0.0, y: 0.0, z: -1.0 }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn p_excited(&self) -> f64 {
        ((1.0 - self.z) / 2.0).clamp(0.0, 1.0)
    }

    pub fn p_ground(&self) -> f64 {
        ((1.0 + self.z) / 2.0).clamp(0.0, 1.0)
    }
}

/// One piecewise-constant drive segment in the frame rotating at
/// `frequency_hz`. Amplitude 0 marks an idle (free-evolution) segment.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DriveSegment {
    pub duration_s: f64,
    /// Drive amplitude in full-scale units; Rabi = rabi_hz_per_unit * amplitude.
    pub amplitude: f64,
    pub phase_rad: f64,
    pub frequency_hz: f64,
}

impl DriveSegment {
    pub fn idle(duration_s: f64, frequency_hz: f64) -> DriveSegment {
        DriveSegment { duration_s, amplitude: 0.0, phase_rad: 0.0, frequency_hz }
    }

    /// A constant pulse split into sub-nanosecond steps so the
    /// unitary/damping split stays accurate.
    pub fn pulse(
        duration_s: f64,
        amplitude: f64,
        phase_rad: f64,
        frequency_hz: f64,
    ) -> Vec<DriveSegment> {
        let steps = (duration_s / 0.5e-9).ceil().max(1.0) as usize;
        let step = duration_s / steps as f64;
        vec![DriveSegment { duration_s: step, amplitude, phase_rad, frequency_hz }; steps]
    }
}

/// Rotate `r` around `axis` (not necessarily unit) by `angle` radians.
fn rodrigues(r: [f64; 3], axis: [f64; 3], angle: f64) -> [f64; 3] {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    if n == 0.0 || angle == 0.0 {
        return r;
    }
    let k = [axis[0] / n, axis[1] / n, axis[2] / n];
    let (s, c) = angle.sin_cos();
    let kxr = [
        k[1] * r[2] - k[2] * r[1],
        k[2] * r[0] - k[0] * r[2],
        k[0] * r[1] - k[1] * r[0],
    ];
    let kdr = k[0] * r[0] + k[1] * r[1] + k[2] * r[2];
    [
        r[0] * c + kxr[0] * s + k[0] * kdr * (1.0 - c),
        r[1] * c + kxr[1] * s + k[1] * kdr * (1.0 - c),
        r[2] * c + kxr[2] * s + k[2] * kdr * (1.0 - c),
    ]
}

/// Rotating-frame evolution of a Bloch vector through drive segments.
///
/// Per segment the detuning is `f_drive - f_q(bias)` plus a per-shot
/// quasi-static offset drawn from the BVG noise through the bias-to-frequency
/// slope. The constant-Hamiltonian rotation is exact; T1 relaxation toward
/// ground and T2* transverse damping apply per segment, which is why driven
/// segments are capped at 1 ns.
pub fn evolve(
    state: Bloch,
    segments: &[DriveSegment],
    params: &QubitParams,
    bias_volts: f64,
    bvg: Option<&BvgModel>,
    seed: u64,
) -> Result<Bloch, DeviceError> {
    params.validate()?;
    if bias_volts.abs() > BVG_RANGE_V {
        return Err(DeviceError::BiasOutOfRange(bias_volts));
    }
    let f_q = qubit_frequency(bias_volts, params);
    let quasi_static_hz = match bvg {
        Some(model) => {
            let g: f64 = substream(seed, 0x0F5E7).sample(StandardNormal);
            g * quasi_static_sigma_hz(model, params, bias_volts)
        }
        None => 0.0,
    };

    let mut r = [state.x, state.y, state.z];
    for segment in segments {
        let driven = segment.amplitude != 0.0;
        if driven && segment.duration_s > MAX_DRIVEN_STEP_S * (1.0 + 1e-9) {
            return Err(DeviceError::StepTooLong(segment.duration_s));
        }
        let rabi_hz = params.rabi_hz_per_unit * segment.amplitude;
        let detuning_hz = segment.frequency_hz - (f_q + quasi_static_hz);
        let axis = [
            rabi_hz * segment.phase_rad.cos(),
            rabi_hz * segment.phase_rad.sin(),
            -detuning_hz,
        ];
        let omega =
            std::f64::consts::TAU * (rabi_hz * rabi_hz + detuning_hz * detuning_hz).sqrt();
        r = rodrigues(r, axis, omega * segment.duration_s);

        let e1 = (-segment.duration_s / params.t1_s).exp();
        let e2 = (-segment.duration_s / params.t2_star_s).exp();
        r[0] *= e2;
        r[1] *= e2;
        r[2] = 1.0 - (1.0 - r[2]) * e1;
    }
    Ok(Bloch { x: r[0], y: r[1], z: r[2] })
}

// ---------------------------------------------------------------------------
// Measurement
// ---------------------------------------------------------------------------

/// Dispersive readout pulse description.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ReadoutPulse {
    /// RF probe frequency at the resonator.
    pub frequency_hz: f64,
    /// IF the probe is downmixed to before digitization.
    pub if_frequency_hz: f64,
    pub duration_s: f64,
    /// IF amplitude in volts at the DAQ input.
    pub amplitude_volts: f64,
    /// Additive Gaussian noise on the emitted waveforms, volts RMS.
    pub noise_rms_volts: f64,
}

impl ReadoutPulse {
    /// 48 ns fs/4 readout at moderate amplitude.
    pub fn standard(frequency_hz: f64) -> ReadoutPulse {
        ReadoutPulse {
            frequency_hz,
            if_frequency_hz: 250e6,
            duration_s: 48e-9,
            amplitude_volts: 0.4,
            noise_rms_volts: 0.01,
        }
    }
}

/// Result of a projective measurement: the assigned outcome, the post-
/// measurement state and the analog IF waveforms carrying the outcome.
#[derive(Debug, Clone)]
pub struct MeasureOutcome {
    pub state: QubitState,
    pub post_state: Bloch,
    pub i_wave: Vec<f64>,
    pub q_wave: Vec<f64>,
}

/// Projective dispersive measurement: collapse with Born probabilities, then
/// emit the IF waveform whose amplitude and phase are set by the resonator
/// response for the collapsed state, plus additive Gaussian noise.
pub fn measure(
    state: &Bloch,
    pulse: &ReadoutPulse,
    params: &QubitParams,
    seed: u64,
) -> Result<MeasureOutcome, DeviceError> {
    params.validate()?;
    if pulse.duration_s <= 0.0 {
        return Err(DeviceError::BadReadoutDuration(pulse.duration_s));
    }
    let mut rng = substream(seed, 0x3EA5);
    let collapsed = if rng.random::<f64>() < state.p_excited() {
        QubitState::Excited
    } else {
        QubitState::Ground
    };
    // QND imperfection: the post-measurement state flips with probability
    // 1 - qnd_fidelity.
    let post = if rng.random::<f64>() < params.qnd_fidelity {
        collapsed
    } else {
        match collapsed {
            QubitState::Ground => QubitState::Excited,
            QubitState::Excited => QubitState::Ground,
        }
    };

    let phasor =
        resonator_response(pulse.frequency_hz, collapsed, params) * pulse.amplitude_volts;
    let n = (pulse.duration_s * crate::demod::SAMPLE_RATE_HZ).round() as usize;
    let step = std::f64::consts::TAU * pulse.if_frequency_hz / crate::demod::SAMPLE_RATE_HZ;
    let mut i_wave = Vec::with_capacity(n);
    let mut q_wave = Vec::with_capacity(n);
    for k in 0..n {
        let carrier = Complex64::from_polar(1.0, step * k as f64);
        let v = phasor * carrier;
        let ni: f64 = rng.sample(StandardNormal);
        let nq: f64 = rng.sample(StandardNormal);
        i_wave.push(v.re + pulse.noise_rms_volts * ni);
        q_wave.push(v.im + pulse.noise_rms_volts * nq);
    }
    Ok(MeasureOutcome {
        state: collapsed,
        post_state: match post {
            QubitState::Ground => Bloch::ground(),
            QubitState::Excited => Bloch::excited(),
        },
        i_wave,
        q_wave,
    })
}

// ---------------------------------------------------------------------------
// Bias voltage generator
// ---------------------------------------------------------------------------

/// Temperature sensitivity of the BVG output.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TempDrift {
    pub coefficient_v_per_c: f64,
    /// Ambient swing amplitude, degrees C, on a sinusoidal cycle.
    pub swing_c: f64,
    pub period_s: f64,
}

/// Ultra-stable DC source: 20-bit setpoint over +-5 V, band-limited
/// low-frequency noise, long-term linear drift and an optional temperature
/// term.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BvgModel {
    pub set_voltage: f64,
    /// Peak-to-peak noise in the 0.1-10 Hz band.
    pub noise_pp_volts: f64,
    /// Long-term drift, peak-to-peak over a 10 h run.
    pub drift_pp_volts_per_10h: f64,
    pub temp: Option<TempDrift>,
}

impl BvgModel {
    /// Bench configuration: 1.6 uVpp intrinsic noise plus the drift that
    /// closes the observed ~6 uVpp 10-hour excursion.
    pub fn bench(set_voltage: f64) -> BvgModel {
        BvgModel {
            set_voltage,
            noise_pp_volts: 1.6e-6,
            drift_pp_volts_per_10h: 4.4e-6,
            temp: None,
        }
    }

    /// Ideal source: quantization only.
    pub fn quiet(set_voltage: f64) -> BvgModel {
        BvgModel { set_voltage, noise_pp_volts: 0.0, drift_pp_volts_per_10h: 0.0, temp: None }
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        if self.set_voltage.abs() > BVG_RANGE_V {
            return Err(DeviceError::BiasOutOfRange(self.set_voltage));
        }
        if self.noise_pp_volts < 0.0 {
            return Err(DeviceError::BadParams(format!(
                "noise p-p must be >= 0, got {}",
                self.noise_pp_volts
            )));
        }
        Ok(())
    }

    /// One LSB of the 20-bit DAC over the +-5 V range.
    pub fn lsb_volts() -> f64 {
        2.0 * BVG_RANGE_V / (1u64 << BVG_RESOLUTION_BITS) as f64
    }

    /// Setpoint after DAC quantization.
    pub fn quantized_setpoint(&self) -> f64 {
        (self.set_voltage / BvgModel::lsb_volts()).round() * BvgModel::lsb_volts()
    }

    /// Marginal RMS of the synthesized noise; the p-p figure covers about
    /// +-4 sigma over a long observation.
    pub fn noise_sigma_volts(&self) -> f64 {
        self.noise_pp_volts / 8.0
    }
}

/// Number of sinusoids in the band-limited noise synthesis.
const BVG_NOISE_TONES: usize = 200;

/// Instantaneous BVG output at time `t`: quantized setpoint, plus a
/// band-limited (0.1-10 Hz) noise realization synthesized from 200
/// random-phase log-spaced sinusoids, plus linear drift and the optional
/// temperature term. Deterministic per seed.
pub fn bvg_output(model: &BvgModel, t_s: f64, seed: u64) -> Result<f64, DeviceError> {
    model.validate()?;
    let mut v = model.quantized_setpoint();

    if model.noise_pp_volts > 0.0 {
        let mut rng = substream(seed, 0xB76);
        let amplitude = model.noise_sigma_volts() / (BVG_NOISE_TONES as f64 / 2.0).sqrt();
        let log_lo = 0.1f64.ln();
        let log_hi = 10f64.ln();
        for k in 0..BVG_NOISE_TONES {
            let f = (log_lo + (log_hi - log_lo) * k as f64 / (BVG_NOISE_TONES - 1) as f64).exp();
            let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            v += amplitude * (std::f64::consts::TAU * f * t_s + phase).sin();
        }
    }

    // Linear drift spanning the configured p-p over a 10 h window.
    v += model.drift_pp_volts_per_10h * (t_s / 36_000.0 - 0.5);

    if let Some(temp) = &model.temp {
        v += temp.coefficient_v_per_c
            * temp.swing_c
            * (std::f64::consts::TAU * t_s / temp.period_s).sin();
    }
    Ok(v)
}

/// Root-sum-square combination of independent noise contributions quoted as
/// peak-to-peak values.
pub fn combine_noise_pp(components_pp: &[f64]) -> f64 {
    components_pp.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// Quasi-static detuning spread the BVG noise imposes on the qubit:
/// sigma_f = |df/dV| * sigma_V.
pub fn quasi_static_sigma_hz(model: &BvgModel, params: &QubitParams, bias_volts: f64) -> f64 {
    qubit_frequency_slope(bias_volts, params).abs() * model.noise_sigma_volts()
}
