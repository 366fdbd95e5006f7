//! DAQ model: 12-bit digitization with a configurable noise floor, bit-exact
//! IQ digital mixing with the multiplier-free fs/4 fast path, windowed
//! accumulation, rotation/threshold state discrimination with feedback
//! trigger emission, decimated multi-channel demodulation, and SNR/THD/SFDR/
//! ENOB spectrum metrics.
//!
//! Fixed-point conventions are pinned so outputs are bit-exact: the general
//! mixing path uses 16-bit signed trig coefficients (full scale 32767) with
//! round-half-even on the rescaled product, accumulators are 32-bit signed
//! with saturation.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::substream;
use crate::spectrum::{blackman_harris4, fft_forward};
use crate::timing::{TriggerEvent, PIPELINE_CLOCK_PS};
use crate::QubitState;

/// DAQ sample rate, Sa/s.
pub const SAMPLE_RATE_HZ: f64 = 1e9;
/// Analog input band of the DAQ front end, Hz.
pub const INPUT_BAND_HZ: (f64, f64) = (4.5e6, 400e6);
/// 12-bit signed code range.
pub const CODE_MIN: i16 = -2048;
pub const CODE_MAX: i16 = 2047;
/// Full scale of the 16-bit trig lookup used by the general mixing path.
const TRIG_SCALE: f64 = 32767.0;
/// Accumulation window cap; 12-bit inputs cannot saturate 32-bit sums below
/// this length.
pub const MAX_WINDOW_SAMPLES: usize = 1 << 18;

#[derive(Debug, Error, PartialEq)]
pub enum DemodError {
    #[error("i/q streams must have equal length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("code {0} outside the signed 12-bit range")]
    CodeRange(i32),
    #[error("fast path requires if_frequency = fs/4 = 250 MHz, got {0} Hz")]
    FastPathFrequency(f64),
    #[error("window of {window} samples does not tile stream of {len} samples; partial windows are rejected")]
    PartialWindow { window: usize, len: usize },
    #[error("window must be between 1 and {MAX_WINDOW_SAMPLES} samples and fit the stream, got {0}")]
    WindowRange(usize),
    #[error("window must be a multiple of 4 for the decimated path, got {0}")]
    WindowAlignment(usize),
    #[error("channel at {0} Hz is outside the {1}..{2} Hz input band")]
    ChannelOutOfBand(f64, f64, f64),
    #[error("channels at {0} Hz and {1} Hz are closer than twice the post-decimation bin width ({2} Hz)")]
    ChannelSpacing(f64, f64, f64),
    #[error("stream length must be a power of two >= 4096, got {0}")]
    BadSpectrumLength(usize),
    #[error("no tone found: spectrum is flat")]
    NoTone,
    #[error("ADC model invalid: {0}")]
    BadAdcModel(String),
}

// ---------------------------------------------------------------------------
// Sample stream
// ---------------------------------------------------------------------------

/// Time-indexed pairs of signed 12-bit ADC codes at 1 GSa/s.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IQSampleStream {
    i_codes: Vec<i16>,
    q_codes: Vec<i16>,
    pub start_timestamp_ps: i64,
}

impl IQSampleStream {
    pub fn new(
        i_codes: Vec<i16>,
        q_codes: Vec<i16>,
        start_timestamp_ps: i64,
    ) -> Result<IQSampleStream, DemodError> {
        if i_codes.len() != q_codes.len() {
            return Err(DemodError::LengthMismatch(i_codes.len(), q_codes.len()));
        }
        for &c in i_codes.iter().chain(&q_codes) {
            if !(CODE_MIN..=CODE_MAX).contains(&c) {
                return Err(DemodError::CodeRange(c as i32));
            }
        }
        Ok(IQSampleStream { i_codes, q_codes, start_timestamp_ps })
    }

    pub fn len(&self) -> usize {
        self.i_codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.i_codes.is_empty()
    }

    pub fn i_codes(&self) -> &[i16] {
        &self.i_codes
    }

    pub fn q_codes(&self) -> &[i16] {
        &self.q_codes
    }

    /// Complex view I + jQ.
    pub fn phasors(&self) -> Vec<Complex64> {
        self.i_codes
            .iter()
            .zip(&self.q_codes)
            .map(|(&i, &q)| Complex64::new(i as f64, q as f64))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// ADC model
// ---------------------------------------------------------------------------

/// Measured ADC performance at one input frequency.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdcPerformancePoint {
    pub frequency_hz: f64,
    pub snr_db: f64,
    pub thd_dbc: f64,
    pub enob_bits: f64,
}

/// 12-bit ADC with a band-limited front end and an SNR-calibrated noise
/// floor. The noise floor is referenced to a full-scale sine: the Gaussian
/// noise added before quantization is sized so a full-scale tone at the
/// detected input frequency measures the configured SNR.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdcModel {
    pub full_scale_volts: f64,
    pub input_band_hz: (f64, f64),
    /// SNR/THD table per frequency; empty means a noiseless converter.
    pub performance: Vec<AdcPerformancePoint>,
}

impl AdcModel {
    /// Noiseless 12-bit converter (quantization only).
    pub fn noiseless(full_scale_volts: f64) -> AdcModel {
        AdcModel { full_scale_volts, input_band_hz: INPUT_BAND_HZ, performance: Vec::new() }
    }

    /// Bench characterization of the DAQ front end over 19.9..398 MHz.
    pub fn bench_characterization(full_scale_volts: f64) -> AdcModel {
        let rows = [
            (19.9e6, 60.0, -65.5, 9.4),
            (49e6, 58.3, -65.0, 9.3),
            (98e6, 58.2, -65.6, 9.3),
            (148e6, 58.0, -62.9, 9.2),
            (198e6, 58.1, -64.0, 9.2),
            (248e6, 57.4, -61.9, 9.1),
            (298e6, 57.1, -59.6, 9.1),
            (348e6, 57.0, -57.1, 9.0),
            (398e6, 57.1, -63.9, 9.2),
        ];
        AdcModel {
            full_scale_volts,
            input_band_hz: INPUT_BAND_HZ,
            performance: rows
                .iter()
                .map(|&(frequency_hz, snr_db, thd_dbc, enob_bits)| AdcPerformancePoint {
                    frequency_hz,
                    snr_db,
                    thd_dbc,
                    enob_bits,
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<(), DemodError> {
        if self.full_scale_volts <= 0.0 {
            return Err(DemodError::BadAdcModel(format!(
                "full scale must be > 0 V, got {}",
                self.full_scale_volts
            )));
        }
        if self.input_band_hz.0 >= self.input_band_hz.1 {
            return Err(DemodError::BadAdcModel(format!(
                "band low {} must be below band high {}",
                self.input_band_hz.0, self.input_band_hz.1
            )));
        }
        for p in &self.performance {
            if p.snr_db <= 0.0 {
                return Err(DemodError::BadAdcModel(format!(
                    "SNR must be > 0 dB, got {} at {} Hz",
                    p.snr_db, p.frequency_hz
                )));
            }
        }
        Ok(())
    }

    /// SNR target at a frequency, linearly interpolated between table rows
    /// and clamped at the ends. `None` for a noiseless model.
    pub fn snr_at(&self, frequency_hz: f64) -> Option<f64> {
        if self.performance.is_empty() {
            return None;
        }
        let mut rows = self.performance.clone();
        rows.sort_by(|a, b| a.frequency_hz.total_cmp(&b.frequency_hz));
        if frequency_hz <= rows[0].frequency_hz {
            return Some(rows[0].snr_db);
        }
        let last = rows.len() - 1;
        if frequency_hz >= rows[last].frequency_hz {
            return Some(rows[last].snr_db);
        }
        let hi = rows.iter().position(|r| r.frequency_hz >= frequency_hz).unwrap();
        let (a, b) = (&rows[hi - 1], &rows[hi]);
        let t = (frequency_hz - a.frequency_hz) / (b.frequency_hz - a.frequency_hz);
        Some(a.snr_db + t * (b.snr_db - a.snr_db))
    }
}

/// Digitized stream plus the clipping flag.
#[derive(Debug, Clone)]
pub struct DigitizeResult {
    pub stream: IQSampleStream,
    pub clipped: bool,
}

/// Brick-wall band-pass of a real waveform sampled at `rate_hz`.
///
/// Exact for capture-coherent signals (every component on an FFT bin); a
/// non-coherent capture pays the usual spectral-leakage penalty at the band
/// edges.
fn band_pass(wave: &[f64], rate_hz: f64, band: (f64, f64)) -> Vec<f64> {
    let n = wave.len();
    let mut spec: Vec<Complex64> = wave.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_forward(&mut spec);
    for (k, bin) in spec.iter_mut().enumerate() {
        let f = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 } * rate_hz / n as f64;
        if f.abs() < band.0 || f.abs() > band.1 {
            *bin = Complex64::new(0.0, 0.0);
        }
    }
    // Inverse FFT via conjugation, normalized by n.
    for bin in spec.iter_mut() {
        *bin = bin.conj();
    }
    fft_forward(&mut spec);
    spec.iter().map(|v| v.conj().re / n as f64).collect()
}

/// Digitize analog I/Q waveforms (volts, 1 GSa/s): band-pass to the input
/// band, add Gaussian noise sized to the model SNR at the dominant tone
/// frequency, and quantize round-to-nearest to 12 bits with clipping.
///
/// Out-of-range samples clip and set the `clipped` flag rather than erroring.
pub fn adc_digitize(
    i_wave: &[f64],
    q_wave: &[f64],
    model: &AdcModel,
    seed: u64,
) -> Result<DigitizeResult, DemodError> {
    model.validate()?;
    if i_wave.len() != q_wave.len() {
        return Err(DemodError::LengthMismatch(i_wave.len(), q_wave.len()));
    }
    let n = i_wave.len();
    let i_filt = band_pass(i_wave, SAMPLE_RATE_HZ, model.input_band_hz);
    let q_filt = band_pass(q_wave, SAMPLE_RATE_HZ, model.input_band_hz);

    // Dominant in-band tone of the complex signal selects the SNR row.
    let mut spec: Vec<Complex64> =
        i_filt.iter().zip(&q_filt).map(|(&i, &q)| Complex64::new(i, q)).collect();
    fft_forward(&mut spec);
    let lsb = model.full_scale_volts / CODE_MAX as f64;
    let (peak_bin, peak_mag) = spec
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, v)| (k, v.norm()))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((0, 0.0));
    let tone_hz = {
        let f = if peak_bin <= n / 2 { peak_bin as f64 } else { peak_bin as f64 - n as f64 };
        (f * SAMPLE_RATE_HZ / n as f64).abs()
    };
    let tone_present = peak_mag / n as f64 > 1e-9 * model.full_scale_volts;

    // Noise sized against a full-scale sine: total noise power in code units
    // is P_fs / 10^(SNR/10); quantization contributes 1/12 of that.
    let sigma_code = match model.snr_at(tone_hz) {
        Some(snr_db) if tone_present => {
            let p_fs = (CODE_MAX as f64).powi(2) / 2.0;
            let p_total = p_fs / 10f64.powf(snr_db / 10.0);
            (p_total - 1.0 / 12.0).max(0.0).sqrt()
        }
        _ => 0.0,
    };

    let mut clipped = false;
    let mut quantize = |wave: &[f64], rng: &mut rand_chacha::ChaCha8Rng| -> Vec<i16> {
        wave.iter()
            .map(|&v| {
                let noise: f64 = if sigma_code > 0.0 {
                    let g: f64 = rng.sample(StandardNormal);
                    g * sigma_code
                } else {
                    0.0
                };
                let code = (v / lsb + noise).round();
                if code < CODE_MIN as f64 || code > CODE_MAX as f64 {
                    clipped = true;
                }
                code.clamp(CODE_MIN as f64, CODE_MAX as f64) as i16
            })
            .collect()
    };
    let i_codes = quantize(&i_filt, &mut substream(seed, 0));
    let q_codes = quantize(&q_filt, &mut substream(seed, 1));
    Ok(DigitizeResult { stream: IQSampleStream::new(i_codes, q_codes, 0)?, clipped })
}

// ---------------------------------------------------------------------------
// Digital mixing
// ---------------------------------------------------------------------------

/// Demodulation configuration of one DAQ channel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DemodConfig {
    pub if_frequency_hz: f64,
    pub window_samples: usize,
    pub rotation_rad: f64,
    pub threshold: i32,
    /// Multiplier-free path; valid only when `if_frequency_hz` = fs/4.
    pub fast_path: bool,
}

impl DemodConfig {
    /// fs/4 fast-path configuration.
    pub fn fs4(window_samples: usize, rotation_rad: f64, threshold: i32) -> DemodConfig {
        DemodConfig {
            if_frequency_hz: SAMPLE_RATE_HZ / 4.0,
            window_samples,
            rotation_rad,
            threshold,
            fast_path: true,
        }
    }

    pub fn validate(&self) -> Result<(), DemodError> {
        if self.fast_path && self.if_frequency_hz != SAMPLE_RATE_HZ / 4.0 {
            return Err(DemodError::FastPathFrequency(self.if_frequency_hz));
        }
        Ok(())
    }
}

/// Digitally mixed complex stream plus the pipeline latency of the stage.
#[derive(Debug, Clone)]
pub struct MixOutput {
    pub samples: Vec<(i32, i32)>,
    pub latency_ps: i64,
}

/// Digital downconversion:
/// I' = V_I cos(w n / fs) + V_Q sin(w n / fs),
/// Q' = V_Q cos(w n / fs) - V_I sin(w n / fs).
///
/// The fs/4 fast path cycles the exact coefficients {+1, 0, -1} with period 4
/// and needs no multipliers (1 pipeline clock); the general path multiplies
/// by 16-bit signed trig coefficients and rescales round-half-even (2 clocks).
pub fn digital_mix(stream: &IQSampleStream, cfg: &DemodConfig) -> Result<MixOutput, DemodError> {
    cfg.validate()?;
    let n = stream.len();
    let mut samples = Vec::with_capacity(n);
    if cfg.fast_path {
        for k in 0..n {
            let vi = stream.i_codes[k] as i32;
            let vq = stream.q_codes[k] as i32;
            samples.push(match k % 4 {
                0 => (vi, vq),
                1 => (vq, -vi),
                2 => (-vi, -vq),
                _ => (-vq, vi),
            });
        }
        Ok(MixOutput { samples, latency_ps: PIPELINE_CLOCK_PS })
    } else {
        let step = std::f64::consts::TAU * cfg.if_frequency_hz / SAMPLE_RATE_HZ;
        for k in 0..n {
            let theta = step * k as f64;
            let c = (theta.cos() * TRIG_SCALE).round_ties_even();
            let s = (theta.sin() * TRIG_SCALE).round_ties_even();
            let vi = stream.i_codes[k] as f64;
            let vq = stream.q_codes[k] as f64;
            let ip = ((vi * c + vq * s) / TRIG_SCALE).round_ties_even() as i32;
            let qp = ((vq * c - vi * s) / TRIG_SCALE).round_ties_even() as i32;
            samples.push((ip, qp));
        }
        Ok(MixOutput { samples, latency_ps: 2 * PIPELINE_CLOCK_PS })
    }
}

// ---------------------------------------------------------------------------
// Accumulation
// ---------------------------------------------------------------------------

/// Per-window integer sums plus the three-adder-stage latency.
#[derive(Debug, Clone)]
pub struct AccumulateOutput {
    pub windows: Vec<(i32, i32)>,
    pub latency_ps: i64,
}

/// Sum the mixed stream over non-overlapping windows in saturating 32-bit
/// accumulators. The three-stage adder tree is a latency model only (3
/// pipeline clocks); it never changes the sums. Partial trailing windows are
/// rejected.
pub fn accumulate(
    mixed: &[(i32, i32)],
    window_samples: usize,
) -> Result<AccumulateOutput, DemodError> {
    if window_samples == 0 || window_samples > MAX_WINDOW_SAMPLES {
        return Err(DemodError::WindowRange(window_samples));
    }
    if mixed.is_empty() || mixed.len() % window_samples != 0 {
        return Err(DemodError::PartialWindow { window: window_samples, len: mixed.len() });
    }
    let windows = mixed
        .chunks_exact(window_samples)
        .map(|w| {
            w.iter().fold((0i32, 0i32), |(i, q), &(wi, wq)| {
                (i.saturating_add(wi), q.saturating_add(wq))
            })
        })
        .collect();
    Ok(AccumulateOutput { windows, latency_ps: 3 * PIPELINE_CLOCK_PS })
}

// ---------------------------------------------------------------------------
// State discrimination
// ---------------------------------------------------------------------------

/// Discrimination decision and, for an excited outcome, the feedback trigger.
#[derive(Debug, Clone)]
pub struct Discrimination {
    pub state: QubitState,
    pub rotated: (f64, f64),
    pub feedback: Option<TriggerEvent>,
    pub latency_ps: i64,
}

/// Rotate an accumulated (I, Q) point and compare the rotated I component to
/// the threshold: excited iff rotated I > threshold (ties resolve to ground,
/// the safe default for reset-style feedback). On an excited outcome a
/// level-2 trigger tagged "feedback" is emitted at `timestamp_ps`.
pub fn discriminate(
    point: (i32, i32),
    rotation_rad: f64,
    threshold: i32,
    timestamp_ps: i64,
) -> Discrimination {
    let (c, s) = (rotation_rad.cos(), rotation_rad.sin());
    let (i, q) = (point.0 as f64, point.1 as f64);
    let rotated = (i * c - q * s, i * s + q * c);
    let excited = rotated.0 > threshold as f64;
    Discrimination {
        state: if excited { QubitState::Excited } else { QubitState::Ground },
        rotated,
        feedback: excited.then(|| {
            TriggerEvent::new(2, timestamp_ps.max(0), "daq", "feedback")
                .expect("valid feedback trigger")
        }),
        latency_ps: PIPELINE_CLOCK_PS,
    }
}

// ---------------------------------------------------------------------------
// Multi-channel demodulation
// ---------------------------------------------------------------------------

/// Boxcar-by-2 then decimate-by-2 of an integer complex stream.
fn boxcar_decimate(x: &[(i32, i32)]) -> Vec<(i32, i32)> {
    x.chunks_exact(2).map(|p| (p[0].0 + p[1].0, p[0].1 + p[1].1)).collect()
}

/// Combined gain/phase of the two boxcar-decimation stages at baseband offset
/// `nu` (Hz from fs/4 after the fast-path mix).
fn decimation_response(nu: f64) -> Complex64 {
    let x = std::f64::consts::PI * nu / SAMPLE_RATE_HZ;
    Complex64::from_polar(4.0 * x.cos() * (2.0 * x).cos(), 3.0 * x)
}

/// Demodulate several channels from one capture: fs/4 fast-path mix, double
/// boxcar decimation (rate / 4), then a per-channel rotation at the residual
/// offset and accumulation over the first `window_samples` input samples.
///
/// Results are normalized to the full-rate per-channel average phasor
/// (1/N) sum x[n] exp(-j 2 pi f_ch n / fs), so a full-rate demodulation of a
/// clean in-band channel agrees within the decimation passband tolerance.
pub fn multi_channel_demod(
    stream: &IQSampleStream,
    channels_hz: &[f64],
    window_samples: usize,
) -> Result<Vec<(f64, f64)>, DemodError> {
    if window_samples == 0 || window_samples > MAX_WINDOW_SAMPLES || window_samples > stream.len()
    {
        return Err(DemodError::WindowRange(window_samples));
    }
    if window_samples % 4 != 0 {
        return Err(DemodError::WindowAlignment(window_samples));
    }
    for &f in channels_hz {
        if f < INPUT_BAND_HZ.0 || f > INPUT_BAND_HZ.1 {
            return Err(DemodError::ChannelOutOfBand(f, INPUT_BAND_HZ.0, INPUT_BAND_HZ.1));
        }
    }
    // Post-decimation bin width: (fs/4) / (window/4) = fs / window.
    let min_spacing = 2.0 * SAMPLE_RATE_HZ / window_samples as f64;
    for (a, &fa) in channels_hz.iter().enumerate() {
        for &fb in channels_hz.iter().skip(a + 1) {
            if (fa - fb).abs() < min_spacing {
                return Err(DemodError::ChannelSpacing(fa, fb, min_spacing));
            }
        }
    }

    let head = IQSampleStream::new(
        stream.i_codes[..window_samples].to_vec(),
        stream.q_codes[..window_samples].to_vec(),
        stream.start_timestamp_ps,
    )?;
    let mixed = digital_mix(&head, &DemodConfig::fs4(window_samples, 0.0, 0))?;
    let decimated = boxcar_decimate(&boxcar_decimate(&mixed.samples));
    let n_dec = decimated.len();

    let mut out = Vec::with_capacity(channels_hz.len());
    for &f_ch in channels_hz {
        let nu = f_ch - SAMPLE_RATE_HZ / 4.0;
        // Residual rotation at the decimated rate: one decimated sample spans
        // 4 input samples.
        let step = -std::f64::consts::TAU * nu * 4.0 / SAMPLE_RATE_HZ;
        let sum: Complex64 = decimated
            .iter()
            .enumerate()
            .map(|(l, &(i, q))| {
                Complex64::new(i as f64, q as f64) * Complex64::from_polar(1.0, step * l as f64)
            })
            .sum();
        let normalized = sum / (decimation_response(nu) * n_dec as f64);
        out.push((normalized.re, normalized.im));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Spectrum metrics
// ---------------------------------------------------------------------------

/// Tone metrics of a captured stream.
#[derive(Debug, Clone, Copy)]
pub struct SpectrumMetrics {
    pub snr_db: f64,
    pub thd_dbc: f64,
    pub sfdr_dbc: f64,
    pub enob_bits: f64,
    /// Fundamental bin index in the analyzed (one- or two-sided) spectrum.
    pub fundamental_bin: usize,
}

/// Half-width of the spectral exclusion zone around a tone, in bins; covers
/// the 4-term Blackman-Harris main lobe.
const LOBE_BINS: usize = 6;

/// SNR/THD/SFDR/ENOB of a real capture: windowed FFT, fundamental at the
/// strongest bin, THD over harmonics 2..6 (aliased back in band), SFDR
/// against the worst spur, ENOB = (SNR - 1.76)/6.02. SNR excludes harmonic
/// power.
pub fn spectrum_metrics(x: &[f64]) -> Result<SpectrumMetrics, DemodError> {
    let n = x.len();
    if n < 4096 || !n.is_power_of_two() {
        return Err(DemodError::BadSpectrumLength(n));
    }
    let w = blackman_harris4(n);
    let mut spec: Vec<Complex64> =
        x.iter().zip(&w).map(|(&v, &wi)| Complex64::new(v * wi, 0.0)).collect();
    fft_forward(&mut spec);
    // One-sided power spectrum.
    let power: Vec<f64> = spec[..=n / 2].iter().map(|v| v.norm_sqr()).collect();
    let fold = move |bin: usize| -> usize {
        let r = bin % n;
        if r > n / 2 {
            n - r
        } else {
            r
        }
    };
    metrics_from_power(&power, fold)
}

/// `spectrum_metrics` for a complex capture (two-sided spectrum).
pub fn spectrum_metrics_complex(x: &[Complex64]) -> Result<SpectrumMetrics, DemodError> {
    let n = x.len();
    if n < 4096 || !n.is_power_of_two() {
        return Err(DemodError::BadSpectrumLength(n));
    }
    let w = blackman_harris4(n);
    let mut spec: Vec<Complex64> = x.iter().zip(&w).map(|(&v, &wi)| v * wi).collect();
    fft_forward(&mut spec);
    let power: Vec<f64> = spec.iter().map(|v| v.norm_sqr()).collect();
    metrics_from_power(&power, move |bin| bin % n)
}

fn metrics_from_power(
    power: &[f64],
    fold: impl Fn(usize) -> usize,
) -> Result<SpectrumMetrics, DemodError> {
    let nbins = power.len();
    let lobe_sum = |center: usize| -> f64 {
        let lo = center.saturating_sub(LOBE_BINS);
        let hi = (center + LOBE_BINS).min(nbins - 1);
        power[lo..=hi].iter().sum()
    };
    let in_zone = |bin: usize, center: usize| -> bool {
        (bin as i64 - center as i64).unsigned_abs() as usize <= LOBE_BINS
    };

    let total: f64 = power.iter().sum();
    // Fundamental: strongest bin outside the DC zone.
    let fundamental_bin = power
        .iter()
        .enumerate()
        .filter(|(k, _)| *k > LOBE_BINS)
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .ok_or(DemodError::NoTone)?;
    let p_signal = lobe_sum(fundamental_bin);
    if total <= 0.0 || p_signal < 0.1 * total {
        return Err(DemodError::NoTone);
    }

    // Harmonics 2..6 folded back into the analyzed band.
    let harmonic_bins: Vec<usize> = (2..=6).map(|h| fold(h * fundamental_bin)).collect();
    let p_harmonics: f64 = harmonic_bins
        .iter()
        .filter(|&&hb| !in_zone(hb, fundamental_bin) && hb > LOBE_BINS)
        .map(|&hb| lobe_sum(hb))
        .sum();

    // Noise: everything except the DC zone, the fundamental lobe and the
    // harmonic lobes, rescaled to the full non-signal band.
    let mut p_noise_used = 0.0;
    let mut used = 0usize;
    let mut eligible = 0usize;
    for (k, &p) in power.iter().enumerate() {
        if k <= LOBE_BINS || in_zone(k, fundamental_bin) {
            continue;
        }
        eligible += 1;
        if harmonic_bins.iter().any(|&hb| in_zone(k, hb)) {
            continue;
        }
        used += 1;
        p_noise_used += p;
    }
    if used == 0 {
        return Err(DemodError::NoTone);
    }
    let p_noise = (p_noise_used * eligible as f64 / used as f64).max(1e-300);

    // Worst spur: strongest single bin outside DC and fundamental zones,
    // integrated over its own lobe.
    let p_spur = power
        .iter()
        .enumerate()
        .filter(|(k, _)| *k > LOBE_BINS && !in_zone(*k, fundamental_bin))
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| lobe_sum(k))
        .unwrap_or(0.0);

    let snr_db = 10.0 * (p_signal / p_noise).log10();
    Ok(SpectrumMetrics {
        snr_db,
        thd_dbc: 10.0 * (p_harmonics / p_signal).max(1e-300).log10(),
        sfdr_dbc: 10.0 * (p_spur / p_signal).max(1e-300).log10(),
        enob_bits: (snr_db - 1.76) / 6.02,
        fundamental_bin,
    })
}
