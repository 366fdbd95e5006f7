//! Experiment engine: wires the clock/trigger fabric, AWG, device model and
//! DAQ demodulation into closed loops and reduces each run to sweep rows, a
//! fit and summary numbers.

use num_complex::Complex64;
use serde_json::{json, Map, Value};
use thiserror::Error;

use quelec::awg::{
    self, measure_leakage, precompensate, AwgEngine, AwgError, IqCorrection, PulseEnvelope,
    PulseSequence, ScheduleEntry,
};
use quelec::demod::{
    accumulate, adc_digitize, digital_mix, discriminate, multi_channel_demod, DemodConfig,
    DemodError, IQSampleStream,
};
use quelec::device::{
    bvg_output, evolve, measure, qubit_frequency, Bloch, DeviceError, DriveSegment, ReadoutPulse,
};
use quelec::fidelity::{
    bias_precision_volts, jitter_to_fidelity, spurious_fidelity, spurious_fidelity_worst_case,
    BiasBudget, FidelityError, SpuriousDriveSpec,
};
use quelec::rng::derive_seed;
use quelec::spectrum::dft_bin;
use quelec::timing::{
    distribute_clock, feedback_latency, issue_trigger, LatencyBreakdown, TimingError,
    TriggerEvent, TriggerSchedule,
};
use quelec::QubitState;

use crate::config::{BudgetKind, ExperimentConfig, ExperimentKind};
use crate::fit::{fit_damped_cosine, fit_exp_decay, FitSummary};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("timing: {0}")]
    Timing(#[from] TimingError),
    #[error("demodulation: {0}")]
    Demod(#[from] DemodError),
    #[error("waveform generation: {0}")]
    Awg(#[from] AwgError),
    #[error("device: {0}")]
    Device(#[from] DeviceError),
    #[error("fidelity: {0}")]
    Fidelity(#[from] FidelityError),
    #[error("{0}")]
    Other(String),
}

/// Reduced result of one experiment run.
#[derive(Debug, serde::Serialize)]
pub struct RunResult {
    pub experiment: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub fit: Option<FitSummary>,
    pub latency: LatencyBreakdown,
    /// Named event timeline (feedback experiments), picoseconds.
    pub events: Vec<(String, i64)>,
    /// Per-kind summary numbers.
    pub extras: Map<String, Value>,
}

impl RunResult {
    fn new(config: &ExperimentConfig, columns: &[&str]) -> RunResult {
        RunResult {
            experiment: config.kind.as_str().to_string(),
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            fit: None,
            latency: feedback_latency(&config.ledger),
            events: Vec::new(),
            extras: Map::new(),
        }
    }
}

/// Execute an experiment. Deterministic per (config, seed): every stochastic
/// element draws from a stream derived from (seed, point, shot).
pub fn run(config: &ExperimentConfig) -> Result<RunResult, RunError> {
    match config.kind {
        ExperimentKind::OneTone => run_one_tone(config),
        ExperimentKind::TwoTone => run_two_tone(config),
        ExperimentKind::T1 => run_t1(config),
        ExperimentKind::Ramsey => run_ramsey(config),
        ExperimentKind::JitterHistogram => run_jitter_histogram(config),
        ExperimentKind::FeedbackLatency => run_feedback_latency(config),
        ExperimentKind::MixerCalibration => run_mixer_calibration(config),
        ExperimentKind::BudgetSweep => run_budget_sweep(config),
        ExperimentKind::DemodSelftest => run_demod_selftest(config),
    }
}

fn shot_seed(seed: u64, point: usize, shot: u32) -> u64 {
    derive_seed(derive_seed(seed, 1 + point as u64), shot as u64)
}

// ---------------------------------------------------------------------------
// Readout pipeline
// ---------------------------------------------------------------------------

/// Readout chain shared by the qubit experiments: device waveform -> ADC ->
/// fs/4 mixing -> accumulation, reduced to one integer IQ point per shot.
struct ReadoutChain {
    pulse: ReadoutPulse,
    window: usize,
    rotation_rad: f64,
    threshold: i32,
}

impl ReadoutChain {
    fn new(config: &ExperimentConfig) -> Result<ReadoutChain, RunError> {
        let pulse = ReadoutPulse {
            frequency_hz: config.readout.frequency_hz,
            if_frequency_hz: config.readout.if_frequency_hz,
            duration_s: config.readout.duration_s,
            amplitude_volts: config.readout.amplitude_volts,
            noise_rms_volts: config.readout.noise_rms_volts,
        };
        let window = (pulse.duration_s * quelec::demod::SAMPLE_RATE_HZ).round() as usize;
        let mut chain = ReadoutChain { pulse, window, rotation_rad: 0.0, threshold: 0 };

        // Calibrate the discrimination frame from noiseless reference shots
        // of the two pure states.
        let mut quiet = chain.pulse;
        quiet.noise_rms_volts = 0.0;
        let reference = |state: Bloch, chain: &ReadoutChain| -> Result<(f64, f64), RunError> {
            let out = measure(&state, &quiet, &config.device.qubit, 0)?;
            let point = chain.demodulate(config, &out.i_wave, &out.q_wave, 0)?;
            Ok((point.0 as f64, point.1 as f64))
        };
        let g = reference(Bloch::ground(), &chain)?;
        let e = reference(Bloch::excited(), &chain)?;
        let axis = Complex64::new(e.0 - g.0, e.1 - g.1);
        if axis.norm() < 1.0 {
            return Err(RunError::Other(
                "readout states are indistinguishable; increase readout amplitude".into(),
            ));
        }
        chain.rotation_rad = -axis.arg();
        let rot = |p: (f64, f64), theta: f64| p.0 * theta.cos() - p.1 * theta.sin();
        let mid = (rot(g, chain.rotation_rad) + rot(e, chain.rotation_rad)) / 2.0;
        chain.threshold = mid.round() as i32;
        Ok(chain)
    }

    /// Digitize and demodulate one readout waveform to an accumulated point.
    fn demodulate(
        &self,
        config: &ExperimentConfig,
        i_wave: &[f64],
        q_wave: &[f64],
        seed: u64,
    ) -> Result<(i32, i32), RunError> {
        let digitized = adc_digitize(i_wave, q_wave, &config.adc, seed)?;
        let fast = self.pulse.if_frequency_hz == quelec::demod::SAMPLE_RATE_HZ / 4.0;
        let cfg = DemodConfig {
            if_frequency_hz: self.pulse.if_frequency_hz,
            window_samples: self.window,
            rotation_rad: self.rotation_rad,
            threshold: self.threshold,
            fast_path: fast,
        };
        let mixed = digital_mix(&digitized.stream, &cfg)?;
        let acc = accumulate(&mixed.samples, self.window)?;
        Ok(acc.windows[0])
    }

    /// Full shot: measure, demodulate, discriminate.
    fn readout_shot(
        &self,
        config: &ExperimentConfig,
        state: &Bloch,
        seed: u64,
    ) -> Result<QubitState, RunError> {
        let out = measure(state, &self.pulse, &config.device.qubit, seed)?;
        let point = self.demodulate(config, &out.i_wave, &out.q_wave, derive_seed(seed, 2))?;
        Ok(discriminate(point, self.rotation_rad, self.threshold, 0).state)
    }
}

/// Excited-state fraction over `shots` repeated prepare-evolve-measure shots.
fn excited_fraction(
    config: &ExperimentConfig,
    chain: &ReadoutChain,
    segments: &[DriveSegment],
    point: usize,
) -> Result<f64, RunError> {
    let mut excited = 0u32;
    for shot in 0..config.shots {
        let seed = shot_seed(config.seed, point, shot);
        let state = evolve(
            Bloch::ground(),
            segments,
            &config.device.qubit,
            config.device.bias_volts,
            config.device.bvg.as_ref(),
            seed,
        )?;
        if chain.readout_shot(config, &state, derive_seed(seed, 1))? == QubitState::Excited {
            excited += 1;
        }
    }
    Ok(excited as f64 / config.shots as f64)
}

// ---------------------------------------------------------------------------
// Qubit experiments
// ---------------------------------------------------------------------------

fn run_one_tone(config: &ExperimentConfig) -> Result<RunResult, RunError> {
    let sweep = config.sweep.as_ref().expect("validated");
    let mut result = RunResult::new(config, &["probe_hz", "i_volts", "q_volts", "amplitude_volts", "phase_rad"]);
    let chain = ReadoutChain::new(config)?;
    let lsb = config.adc.full_scale_volts / quelec::demod::CODE_MAX as f64;

    for (point, probe_hz) in sweep.values().into_iter().enumerate() {
        let mut sum = Complex64::new(0.0, 0.0);
        for shot in 0..config.shots {
            let seed = shot_seed(config.seed, point, shot);
            let pulse = ReadoutPulse { frequency_hz: probe_hz, ..chain.pulse };
            let out = measure(&Bloch::ground(), &pulse, &config.device.qubit, seed)?;
            let p = chain.demodulate(config, &out.i_wave, &out.q_wave, derive_seed(seed, 2))?;
            sum += Complex64::new(p.0 as f64, p.1 as f64);
        }
        let mean = sum / (config.shots as f64 * chain.window as f64) * lsb;
        result.rows.push(vec![probe_hz, mean.re, mean.im, mean.norm(), mean.arg()]);
    }
    Ok(result)
}

fn run_two_tone(config: &ExperimentConfig) -> Result<RunResult, RunError> {
    let sweep = config.sweep.as_ref().expect("validated");
    let mut result = RunResult::new(config, &["drive_hz", "p_excited"]);
    let chain = ReadoutChain::new(config)?;
    // A pi-pulse-length probe at each drive frequency: the excitation
    // profile peaks at the qubit frequency with a width set by the Rabi rate.
    let duration = 0.5 / (config.device.qubit.rabi_hz_per_unit * config.drive.amplitude);

    for (point, drive_hz) in sweep.values().into_iter().enumerate() {
        let segments = DriveSegment::pulse(duration, config.drive.amplitude, 0.0, drive_hz);
        let fraction = excited_fraction(config, &chain, &segments, point)?;
        result.rows.push(vec![drive_hz, fraction]);
    }
    result.extras.insert(
        "f_qubit_hz".into(),
        json!(qubit_frequency(config.device.bias_volts, &config.device.qubit)),
    );
    Ok(result)
}

fn run_t1(config: &ExperimentConfig) -> Result<RunResult, RunError> {
    let sweep = config.sweep.as_ref().expect("validated");
    let mut result = RunResult::new(config, &["wait_s", "p_excited"]);
    let chain = ReadoutChain::new(config)?;
    let qubit = &config.device.qubit;
    let f_drive = qubit_frequency(config.device.bias_volts, qubit);
    let pi_duration = 0.5 / (qubit.rabi_hz_per_unit * config.drive.amplitude);

    for (point, wait_s) in sweep.values().into_iter().enumerate() {
        let mut segments = DriveSegment::pulse(pi_duration, config.drive.amplitude, 0.0, f_drive);
        segments.push(DriveSegment::idle(wait_s, f_drive));
        let fraction = excited_fraction(config, &chain, &segments, point)?;
        result.rows.push(vec![wait_s, fraction]);
    }

    let (t, y): (Vec<f64>, Vec<f64>) =
        result.rows.iter().map(|r| (r[0], r[1])).unzip();
    let fit = fit_exp_decay(&t, &y);
    result.extras.insert("t1_fit_s".into(), json!(fit.param("tau")));
    result.extras.insert("t1_configured_s".into(), json!(qubit.t1_s));
    result.fit = Some(fit);
    Ok(result)
}

fn run_ramsey(config: &ExperimentConfig) -> Result<RunResult, RunError> {
    let sweep = config.sweep.as_ref().expect("validated");
    let mut result = RunResult::new(config, &["wait_s", "p_excited"]);
    let chain = ReadoutChain::new(config)?;
    let qubit = &config.device.qubit;
    let f_drive =
        qubit_frequency(config.device.bias_volts, qubit) + config.ramsey.detuning_hz;
    let half_pi = 0.25 / (qubit.rabi_hz_per_unit * config.drive.amplitude);

    for (point, wait_s) in sweep.values().into_iter().enumerate() {
        let mut segments = DriveSegment::pulse(half_pi, config.drive.amplitude, 0.0, f_drive);
        segments.push(DriveSegment::idle(wait_s, f_drive));
        segments.extend(DriveSegment::pulse(half_pi, config.drive.amplitude, 0.0, f_drive));
        let fraction = excited_fraction(config, &chain, &segments, point)?;
        result.rows.push(vec![wait_s, fraction]);
    }

    let (t, y): (Vec<f64>, Vec<f64>) =
        result.rows.iter().map(|r| (r[0], r[1])).unzip();
    let fit = fit_damped_cosine(&t, &y);
    result.extras.insert("t2_star_fit_s".into(), json!(fit.param("tau")));
    result.extras.insert("t2_star_configured_s".into(), json!(qubit.t2_star_s));
    result.extras.insert("fringe_fit_hz".into(), json!(fit.param("frequency")));
    result.extras.insert("detuning_hz".into(), json!(config.ramsey.detuning_hz));
    result.fit = Some(fit);
    Ok(result)
}

// ---------------------------------------------------------------------------
// Jitter histogram
// ---------------------------------------------------------------------------

fn run_jitter_histogram(config: &ExperimentConfig) -> Result<RunResult, RunError> {
    let mut result = RunResult::new(config, &["shot", "delay_ps"]);
    let n = config.jitter.capture_samples;
    let tone_hz = config.jitter.tone_hz;
    let fs = quelec::demod::SAMPLE_RATE_HZ;
    let bin = (tone_hz * n as f64 / fs).round() as usize;
    if bin == 0 || bin >= n / 2 {
        return Err(RunError::Other(format!(
            "jitter tone {tone_hz} Hz not resolvable in a {n}-sample capture"
        )));
    }
    // Snap the tone to the capture grid so phase extraction is coherent.
    let tone_hz = bin as f64 * fs / n as f64;

    // Two AWG channels, each with sigma = differential / sqrt(2).
    let sigma = config.jitter.differential_ps / std::f64::consts::SQRT_2;
    let topology = quelec::timing::ClockTopology::star(
        "tcm",
        &[("awg1", 0, sigma), ("awg2", 0, sigma), ("daq", 0, 0.0)],
        40_000,
    );

    let amplitude = 0.9 * config.adc.full_scale_volts;
    let mut delays = Vec::with_capacity(config.shots as usize);
    for shot in 0..config.shots {
        let clocks = distribute_clock(&topology, shot as u64, config.seed)?;
        let ideal = shot as i64 * 40_000;
        let mut phases = [0.0f64; 2];
        for (ch, module) in ["awg1", "awg2"].iter().enumerate() {
            let delay_s = (clocks[*module] - ideal) as f64 * 1e-12;
            let wave: Vec<f64> = (0..n)
                .map(|k| {
                    let t = k as f64 / fs - delay_s;
                    amplitude * (std::f64::consts::TAU * tone_hz * t).cos()
                })
                .collect();
            let digitized = adc_digitize(
                &wave,
                &vec![0.0; n],
                &config.adc,
                shot_seed(config.seed, ch, shot),
            )?;
            let phasor = dft_bin(&digitized.stream.phasors(), bin);
            phases[ch] = phasor.arg();
        }
        // A positive channel delay retards the phase: t - delay.
        let mut dphi = phases[0] - phases[1];
        // Unwrap to the principal value.
        while dphi > std::f64::consts::PI {
            dphi -= std::f64::consts::TAU;
        }
        while dphi < -std::f64::consts::PI {
            dphi += std::f64::consts::TAU;
        }
        let delay_ps = -dphi / (std::f64::consts::TAU * tone_hz) * 1e12;
        delays.push(delay_ps);
        result.rows.push(vec![shot as f64, delay_ps]);
    }

    let mean = delays.iter().sum::<f64>() / delays.len() as f64;
    let std = (delays.iter().map(|d| (d - mean).powi(2)).sum::<f64>()
        / (delays.len() - 1) as f64)
        .sqrt();
    // 41-bin histogram over +-4 std around the mean.
    let half_span = (4.0 * std).max(0.1);
    let bins = 41usize;
    let mut counts = vec![0u32; bins];
    for d in &delays {
        let idx = ((d - mean + half_span) / (2.0 * half_span) * bins as f64).floor();
        counts[(idx.max(0.0) as usize).min(bins - 1)] += 1;
    }
    result.extras.insert("delay_std_ps".into(), json!(std));
    result.extras.insert("delay_mean_ps".into(), json!(mean));
    result.extras.insert("injected_differential_ps".into(), json!(config.jitter.differential_ps));
    result.extras.insert("histogram_counts".into(), json!(counts));
    result.extras.insert("histogram_center_ps".into(), json!(mean));
    result.extras.insert("histogram_half_span_ps".into(), json!(half_span));
    Ok(result)
}

// ---------------------------------------------------------------------------
// Feedback latency loopback
// ---------------------------------------------------------------------------

/// Chain-ordered event timeline of a feedback loop from the latency ledger:
/// every component contributes exactly once, so the final timestamp equals
/// the exact ledger total.
pub fn feedback_timeline(
    ledger: &quelec::timing::LatencyLedger,
    feedback_fired: bool,
) -> Vec<(String, i64)> {
    let mut events = vec![("measurement_pulse_start".to_string(), 0i64)];
    let mut t = 0i64;
    let pre = ["analog_cabling", "adc_conversion"];
    for name in pre {
        if let Some(d) = ledger.electronics.iter().find(|(n, _)| n == name) {
            t += d.1;
            events.push((format!("{name}_done"), t));
        }
    }
    for (name, d) in &ledger.readout {
        t += d;
        events.push((format!("{name}_end"), t));
    }
    for (name, d) in &ledger.electronics {
        if pre.contains(&name.as_str()) {
            continue;
        }
        if name == "daq_dsp" && *d == quelec::timing::DAQ_DSP_LATENCY_PS {
            events.push(("mixer_out".into(), t + 4_000));
            events.push(("accumulator_out".into(), t + 16_000));
            t += d;
            events.push(("discrimination".into(), t));
        } else {
            t += d;
            events.push((format!("{name}_done"), t));
        }
        if name == "daq_dsp" && !feedback_fired {
            return events;
        }
    }
    events.push(("feedback_pulse_start".into(), t));
    for (name, d) in &ledger.control_pulse {
        t += d;
        events.push((format!("{name}_end"), t));
    }
    events
}

fn run_feedback_latency(config: &ExperimentConfig) -> Result<RunResult, RunError> {
    let mut result = RunResult::new(config, &["event_index", "time_ps"]);
    let readout_samples = (config.feedback.readout_ns as usize).max(4);

    // Loopback: the AWG plays an fs/4 IQ tone whose sign encodes the qubit
    // state, straight into the DAQ.
    let awg_n = readout_samples * 2; // 2 GSa/s rendering of the same duration
    let i_env: Vec<i16> = (0..awg_n)
        .map(|k| (7000.0 * (std::f64::consts::PI * k as f64 / 4.0).cos()).round() as i16)
        .collect();
    let q_env: Vec<i16> = (0..awg_n)
        .map(|k| (7000.0 * (std::f64::consts::PI * k as f64 / 4.0).sin()).round() as i16)
        .collect();
    let scale = match config.feedback.input_state {
        QubitState::Excited => 1.0,
        QubitState::Ground => -1.0,
    };
    let entry = |envelope: &str| ScheduleEntry {
        envelope: envelope.into(),
        offset_samples: 0,
        scale,
        phase_tag: "readout".into(),
    };
    let mut engine = AwgEngine::new();
    let i_handle = engine
        .load_sequence(PulseSequence::new(
            vec![PulseEnvelope::new("tone_i", i_env)?],
            vec![entry("tone_i")],
        ))?
        .handle;
    let q_handle = engine
        .load_sequence(PulseSequence::new(
            vec![PulseEnvelope::new("tone_q", q_env)?],
            vec![entry("tone_q")],
        ))?
        .handle;

    let schedules = [
        TriggerSchedule { module: "awg1".into(), offset_ps: 0, tag: "readout".into() },
        TriggerSchedule { module: "daq".into(), offset_ps: 0, tag: "sample".into() },
    ];
    let triggers = issue_trigger(&config.topology, 0, &schedules, config.seed)?;
    let awg_trigger = triggers
        .iter()
        .find(|t| t.level == 2 && t.source == "awg1")
        .cloned()
        .unwrap_or(TriggerEvent::new(2, 0, "awg1", "readout").map_err(RunError::Timing)?);

    // Render, reconstruct to "analog", resample at the DAQ rate.
    let rendered_i = engine.render(i_handle, &awg_trigger, awg_n)?;
    let rendered_q = engine.render(q_handle, &awg_trigger, awg_n)?;
    let to_daq = |codes: &[i16]| -> Vec<f64> {
        awg::reconstruct(codes, 1)
            .into_iter()
            .step_by(2)
            .map(|v| v * config.adc.full_scale_volts)
            .collect()
    };
    let i_wave = to_daq(&rendered_i.codes);
    let q_wave = to_daq(&rendered_q.codes);

    let digitized = adc_digitize(&i_wave, &q_wave, &config.adc, config.seed)?;
    let mixed = digital_mix(&digitized.stream, &DemodConfig::fs4(readout_samples, 0.0, 0))?;
    let acc = accumulate(&mixed.samples, readout_samples)?;
    let breakdown = feedback_latency(&config.ledger);
    let decision_time =
        breakdown.total_ps - breakdown.control_pulse_ps
            - config.ledger.component("dac_conversion").unwrap_or(0)
            - config.ledger.component("awg_dsp").unwrap_or(0)
            - config.ledger.component("trigger_transport").unwrap_or(0);
    let decision = discriminate(acc.windows[0], 0.0, 0, decision_time);
    let fired = decision.feedback.is_some();

    result.events = feedback_timeline(&config.ledger, fired);
    result.rows = result
        .events
        .iter()
        .enumerate()
        .map(|(k, (_, t))| vec![k as f64, *t as f64])
        .collect();
    let measured_total = result.events.last().map(|(_, t)| *t).unwrap_or(0);
    result.extras.insert("outcome".into(), json!(if fired { "feedback" } else { "no_feedback" }));
    result.extras.insert("awg_dsp_latency_ps".into(), json!(rendered_i.dsp_latency_ps));
    result.extras.insert("mix_latency_ps".into(), json!(mixed.latency_ps));
    result.extras.insert("accumulate_latency_ps".into(), json!(acc.latency_ps));
    result.extras.insert("discriminate_latency_ps".into(), json!(decision.latency_ps));
    if fired {
        result.extras.insert("tau_fb_measured_ps".into(), json!(measured_total));
        result.extras.insert("tau_fb_ledger_ps".into(), json!(breakdown.total_ps));
        result
            .extras
            .insert("tau_el_ps".into(), json!(breakdown.electronics_ps));
    }
    Ok(result)
}

// ---------------------------------------------------------------------------
// Mixer calibration
// ---------------------------------------------------------------------------

fn run_mixer_calibration(config: &ExperimentConfig) -> Result<RunResult, RunError> {
    let mut result = RunResult::new(config, &["stage", "lo_dbc", "image_dbc"]);
    let params = &config.mixer;
    let if_hz = config.mixer_if_hz;

    let before = measure_leakage(params, if_hz, &IqCorrection::identity())?;
    result.rows.push(vec![0.0, before.lo_dbc, before.image_dbc]);

    let correction = precompensate(params, if_hz)?;
    let after = measure_leakage(params, if_hz, &correction)?;
    result.rows.push(vec![1.0, after.lo_dbc, after.image_dbc]);

    result.extras.insert("lo_before_dbc".into(), json!(before.lo_dbc));
    result.extras.insert("image_before_dbc".into(), json!(before.image_dbc));
    result.extras.insert("lo_after_dbc".into(), json!(after.lo_dbc));
    result.extras.insert("image_after_dbc".into(), json!(after.image_dbc));
    result.extras.insert("correction_matrix".into(), json!(correction.matrix));
    result
        .extras
        .insert("correction_offsets".into(), json!([correction.offset_i, correction.offset_q]));
    Ok(result)
}

// ---------------------------------------------------------------------------
// Budget sweeps
// ---------------------------------------------------------------------------

fn run_budget_sweep(config: &ExperimentConfig) -> Result<RunResult, RunError> {
    let budget = config
        .budget
        .as_ref()
        .ok_or_else(|| RunError::Other("budget section missing".into()))?;
    let grid: Vec<f64> = (0..budget.points)
        .map(|k| {
            if budget.points == 1 {
                budget.start
            } else {
                budget.start
                    + (budget.stop - budget.start) * k as f64 / (budget.points - 1) as f64
            }
        })
        .collect();

    let mut result = match budget.kind {
        BudgetKind::Jitter => {
            let mut result = RunResult::new(config, &["jitter_s", "phase_rad", "fidelity"]);
            for &jitter_s in &grid {
                let (phase, fidelity) = jitter_to_fidelity(jitter_s, 100e6)?;
                result.rows.push(vec![jitter_s, phase, fidelity]);
            }
            result
        }
        BudgetKind::Sfdr => {
            let mut result = RunResult::new(
                config,
                &["sfdr_dbc", "worst_case_fidelity", "nominal_fidelity"],
            );
            for &dbc in &grid {
                let spec = SpuriousDriveSpec::from_sfdr_dbc(dbc);
                let worst = spurious_fidelity_worst_case(&spec, 720)?;
                let nominal = spurious_fidelity(&spec)?;
                result.rows.push(vec![dbc, worst, nominal]);
            }
            result
        }
        BudgetKind::Bias => {
            let mut result = RunResult::new(config, &["flux_precision", "delta_v_volts"]);
            for &flux in &grid {
                let dv = bias_precision_volts(&BiasBudget {
                    flux_precision: flux,
                    r_ohm: config.device.qubit.r_ohm,
                    m_henry: config.device.qubit.m_henry,
                })?;
                result.rows.push(vec![flux, dv]);
            }
            result
        }
    };
    result.extras.insert("budget_kind".into(), json!(budget.kind));
    Ok(result)
}

// ---------------------------------------------------------------------------
// Demod selftest
// ---------------------------------------------------------------------------

fn run_demod_selftest(config: &ExperimentConfig) -> Result<RunResult, RunError> {
    let mut result = RunResult::new(config, &["repetition", "channel", "i", "q", "phase_rad"]);
    let window = config.demod.window;
    let channels = &config.demod.channels;

    // 1. Worked fs/4 example.
    let s = IQSampleStream::new(vec![100, 100, 100, 100], vec![0, 0, 0, 0], 0)?;
    let mixed = digital_mix(&s, &DemodConfig::fs4(4, 0.0, 0))?;
    let example_ok = mixed.samples == vec![(100, 0), (0, -100), (-100, 0), (0, 100)];

    // 2. Fast path vs general path over random streams.
    let mut equivalence_ok = true;
    for case in 0..200 {
        let seed = derive_seed(config.seed, 0x5e1f + case);
        let mut state = seed;
        let mut next = || {
            // splitmix-style scramble; plenty for test data
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as i32 % 2048) as i16
        };
        let n = 64 + (case as usize * 37) % 1024;
        let i: Vec<i16> = (0..n).map(|_| next()).collect();
        let q: Vec<i16> = (0..n).map(|_| next()).collect();
        let stream = IQSampleStream::new(i, q, 0)?;
        let fast = digital_mix(&stream, &DemodConfig::fs4(n, 0.0, 0))?;
        let mut general = DemodConfig::fs4(n, 0.0, 0);
        general.fast_path = false;
        if fast.samples != digital_mix(&stream, &general)?.samples {
            equivalence_ok = false;
            break;
        }
    }

    // 3. Single-tone isolation.
    let tone_channel = channels.len() / 2;
    let make_capture = |phase0: f64| -> Result<IQSampleStream, RunError> {
        let mut i = vec![0f64; window];
        let mut q = vec![0f64; window];
        for (c, &f) in channels.iter().enumerate() {
            let amp = 180.0;
            let own_phase = phase0 + c as f64 * 0.7;
            for k in 0..window {
                let th = std::f64::consts::TAU * f * k as f64 / quelec::demod::SAMPLE_RATE_HZ
                    + own_phase;
                i[k] += amp * th.cos();
                q[k] += amp * th.sin();
            }
        }
        Ok(IQSampleStream::new(
            i.iter().map(|&v| v.round() as i16).collect(),
            q.iter().map(|&v| v.round() as i16).collect(),
            0,
        )?)
    };
    let single = {
        let f = channels[tone_channel];
        let mut i = vec![0f64; window];
        let mut q = vec![0f64; window];
        for k in 0..window {
            let th = std::f64::consts::TAU * f * k as f64 / quelec::demod::SAMPLE_RATE_HZ;
            i[k] += 200.0 * th.cos();
            q[k] += 200.0 * th.sin();
        }
        IQSampleStream::new(
            i.iter().map(|&v| v.round() as i16).collect(),
            q.iter().map(|&v| v.round() as i16).collect(),
            0,
        )?
    };
    let iso = multi_channel_demod(&single, channels, window)?;
    let own = (iso[tone_channel].0.powi(2) + iso[tone_channel].1.powi(2)).sqrt();
    let worst_other = iso
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != tone_channel)
        .map(|(_, &(i, q))| (i * i + q * q).sqrt())
        .fold(0.0f64, f64::max);
    let isolation_db = 20.0 * (own / worst_other.max(1e-12)).log10();

    // 4. Rotating-phase repetitions trace circles on the IQ plane.
    let reps = config.demod.repetitions;
    let mut phase_monotone = vec![true; channels.len()];
    let mut last_phase = vec![0.0f64; channels.len()];
    for rep in 0..reps {
        let phase0 = std::f64::consts::TAU * rep as f64 / reps as f64;
        let capture = make_capture(phase0)?;
        let points = multi_channel_demod(&capture, channels, window)?;
        for (ch, &(i, q)) in points.iter().enumerate() {
            let phase = q.atan2(i);
            if rep > 0 {
                let mut step = phase - last_phase[ch];
                while step <= -std::f64::consts::PI {
                    step += std::f64::consts::TAU;
                }
                while step > std::f64::consts::PI {
                    step -= std::f64::consts::TAU;
                }
                if step <= 0.0 {
                    phase_monotone[ch] = false;
                }
            }
            last_phase[ch] = phase;
            result.rows.push(vec![rep as f64, ch as f64, i, q, phase]);
        }
    }
    let circles_ok = phase_monotone.iter().all(|&m| m);

    result.extras.insert("worked_example_ok".into(), json!(example_ok));
    result.extras.insert("fast_general_equivalence_ok".into(), json!(equivalence_ok));
    result.extras.insert("isolation_db".into(), json!(isolation_db));
    result.extras.insert("isolation_ok".into(), json!(isolation_db >= 40.0));
    result.extras.insert("circles_monotone_ok".into(), json!(circles_ok));
    let passed = example_ok && equivalence_ok && isolation_db >= 40.0 && circles_ok;
    result.extras.insert("passed".into(), json!(passed));
    Ok(result)
}

// ---------------------------------------------------------------------------
// Shared helpers for integration suites
// ---------------------------------------------------------------------------

/// Sample the BVG over a 10 hour window and return (min, max) volts.
pub fn bvg_ten_hour_excursion(
    model: &quelec::device::BvgModel,
    seed: u64,
) -> Result<(f64, f64), RunError> {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for k in 0..3600 {
        let v = bvg_output(model, k as f64 * 10.0, seed)?;
        min = min.min(v);
        max = max.max(v);
    }
    Ok((min, max))
}
