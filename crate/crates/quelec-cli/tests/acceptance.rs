//! Acceptance suite: every release criterion as one test, each printing a
//! pass/fail line (run with `--nocapture` to see them all).

use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;

use quelec::awg::{measure_leakage, precompensate, IqCorrection, MixerParams};
use quelec::demod::{
    adc_digitize, digital_mix, multi_channel_demod, spectrum_metrics, AdcModel, DemodConfig,
    IQSampleStream,
};
use quelec::fidelity::{
    bias_precision_volts, gate_fidelity, jitter_for_fidelity, rotation_unitary,
    spurious_fidelity, spurious_fidelity_worst_case, BiasBudget, SpuriousDriveSpec,
};
use quelec::rng::substream;
use quelec::timing::{feedback_latency, pll_lock, LatencyGroup, LatencyLedger, PllConfig};

use quelec_cli::config;
use quelec_cli::experiments::{self, feedback_timeline};

fn report(criterion: &str, pass: bool, detail: &str) {
    println!("[{}] {criterion}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{criterion}: {detail}");
}

fn run_toml(text: &str) -> experiments::RunResult {
    let cfg = config::parse(text).expect("valid acceptance config");
    experiments::run(&cfg).expect("experiment runs")
}

fn extra_f64(result: &experiments::RunResult, key: &str) -> f64 {
    result.extras[key].as_f64().unwrap_or(f64::NAN)
}

// ---------------------------------------------------------------------------
// 1. Demod exactness
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_demod_exactness() {
    let start = Instant::now();
    let mut rng = substream(0xACC1, 0);
    for case in 0..10_000u32 {
        let n = rng.random_range(1..=4096usize);
        let i: Vec<i16> = (0..n).map(|_| rng.random_range(-2048i16..=2047)).collect();
        let q: Vec<i16> = (0..n).map(|_| rng.random_range(-2048i16..=2047)).collect();
        let stream = IQSampleStream::new(i, q, 0).unwrap();
        let fast = digital_mix(&stream, &DemodConfig::fs4(n, 0.0, 0)).unwrap();
        let mut general = DemodConfig::fs4(n, 0.0, 0);
        general.fast_path = false;
        let slow = digital_mix(&stream, &general).unwrap();
        assert_eq!(fast.samples, slow.samples, "case {case} length {n}");
    }

    let s = IQSampleStream::new(vec![100, 100, 100, 100], vec![0, 0, 0, 0], 0).unwrap();
    let worked = digital_mix(&s, &DemodConfig::fs4(4, 0.0, 0)).unwrap();
    let example_ok = worked.samples == vec![(100, 0), (0, -100), (-100, 0), (0, 100)];

    let elapsed = start.elapsed().as_secs_f64();
    report(
        "criterion 1 demod exactness",
        example_ok && elapsed < 10.0,
        &format!("10^4 random streams bit-exact, worked example ok, {elapsed:.1} s"),
    );
}

// ---------------------------------------------------------------------------
// 2. Fidelity numbers
// ---------------------------------------------------------------------------

#[test]
fn criterion_02_fidelity_numbers() {
    let f = gate_fidelity(
        &rotation_unitary(std::f64::consts::PI, 0.00387),
        &rotation_unitary(std::f64::consts::PI, 0.0),
    );
    let phase_ok = (f - 0.99999).abs() <= 1e-6;

    let jitter_ps = jitter_for_fidelity(0.99999, 100e6).unwrap() * 1e12;
    let jitter_ok = (jitter_ps - 6.2).abs() <= 0.05;

    let dv_uv = bias_precision_volts(&BiasBudget {
        flux_precision: 1e-5,
        r_ohm: 1e3,
        m_henry: 2e-12,
    })
    .unwrap()
        * 1e6;
    let dv_ok = (dv_uv - 10.34).abs() <= 0.01;

    report(
        "criterion 2 fidelity numbers",
        phase_ok && jitter_ok && dv_ok,
        &format!("F(0.00387 rad) = {f:.8}, jitter = {jitter_ps:.3} ps, dV = {dv_uv:.3} uV"),
    );
}

// ---------------------------------------------------------------------------
// 3. Spurious-drive claim
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_spurious_drive() {
    let spec = SpuriousDriveSpec::from_sfdr_dbc(-40.0);
    let worst = spurious_fidelity_worst_case(&spec, 720).unwrap();
    let window_ok = (0.99997..=0.999995).contains(&worst);

    let mut monotone = true;
    let mut last = f64::INFINITY;
    for k in 0..20 {
        let m = 10f64.powf(-4.0 + 3.0 * k as f64 / 19.0);
        let f = spurious_fidelity_worst_case(&SpuriousDriveSpec::reference(m), 360).unwrap();
        if f > last + 1e-15 {
            monotone = false;
        }
        last = f;
    }

    let commensurate = spurious_fidelity(&spec).unwrap();
    let commensurate_ok = commensurate > 1.0 - 1e-8;

    report(
        "criterion 3 spurious drive",
        window_ok && monotone && commensurate_ok,
        &format!(
            "worst-case F = {worst:.7} at -40 dBc, monotone over 20-point sweep, commensurate F = {commensurate:.10}"
        ),
    );
}

// ---------------------------------------------------------------------------
// 4. Feedback latency
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_feedback_latency() {
    let result = run_toml("kind = \"feedback_latency\"\nseed = 9\n");
    let tau_el = extra_f64(&result, "tau_el_ps");
    let measured = extra_f64(&result, "tau_fb_measured_ps");
    let ledger_total = extra_f64(&result, "tau_fb_ledger_ps");
    let default_ledger = LatencyLedger::default_feedback_budget();
    let components_ok = default_ledger.component("awg_dsp") == Some(16_000)
        && default_ledger.component("daq_dsp") == Some(20_000);

    // Event-timeline and ledger totals agree exactly for randomized ledgers.
    let mut rng = substream(0xACC4, 0);
    let mut random_ok = true;
    for _ in 0..1000 {
        let mut ledger = LatencyLedger::new();
        for k in 0..rng.random_range(1..8usize) {
            ledger.record(
                LatencyGroup::Electronics,
                &format!("e{k}"),
                rng.random_range(0..200_000i64),
            );
        }
        if rng.random::<bool>() {
            ledger.record(LatencyGroup::Readout, "ro", rng.random_range(0..100_000i64));
        }
        if rng.random::<bool>() {
            ledger.record(LatencyGroup::ControlPulse, "cp", rng.random_range(0..100_000i64));
        }
        let timeline = feedback_timeline(&ledger, true);
        let last = timeline.last().map(|(_, t)| *t).unwrap_or(0);
        if last != feedback_latency(&ledger).total_ps {
            random_ok = false;
            break;
        }
    }

    report(
        "criterion 4 feedback latency",
        tau_el == 125_000.0
            && measured == ledger_total
            && components_ok
            && random_ok,
        &format!(
            "tau_EL = {tau_el} ps (exactly 125 ns), timeline total = ledger total = {measured} ps, 1000 randomized ledgers exact"
        ),
    );
}

// ---------------------------------------------------------------------------
// 5. Jitter recovery
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_jitter_recovery() {
    let start = Instant::now();
    let injected = run_toml("kind = \"jitter_histogram\"\nseed = 3\n");
    let std_ps = extra_f64(&injected, "delay_std_ps");
    let recovery_ok = (std_ps - 5.0).abs() <= 0.5;

    let quiet = run_toml(
        "kind = \"jitter_histogram\"\nseed = 3\n[jitter]\ndifferential_ps = 0.0\n",
    );
    let floor_ps = extra_f64(&quiet, "delay_std_ps");
    let floor_ok = floor_ps < 0.1;

    let elapsed = start.elapsed().as_secs_f64();
    report(
        "criterion 5 jitter recovery",
        recovery_ok && floor_ok && elapsed < 60.0,
        &format!(
            "5000-shot std = {std_ps:.3} ps (injected 5), zero-jitter floor = {floor_ps:.4} ps, {elapsed:.1} s"
        ),
    );
}

// ---------------------------------------------------------------------------
// 6. Qubit experiments
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_qubit_experiments() {
    let start = Instant::now();
    let t1 = run_toml(
        r#"
kind = "t1"
seed = 20
shots = 500
[sweep]
name = "wait_s"
start = 0.0
stop = 320e-6
points = 40
"#,
    );
    let t1_fit = extra_f64(&t1, "t1_fit_s");
    let t1_ok = (t1_fit - 90e-6).abs() <= 0.05 * 90e-6;

    let ramsey = run_toml(
        r#"
kind = "ramsey"
seed = 21
shots = 500
[sweep]
name = "wait_s"
start = 0.0
stop = 75e-6
points = 101
[ramsey]
detuning_hz = 0.25e6
"#,
    );
    let t2_fit = extra_f64(&ramsey, "t2_star_fit_s");
    let fringe = extra_f64(&ramsey, "fringe_fit_hz");
    let t2_ok = (t2_fit - 19e-6).abs() <= 0.05 * 19e-6;
    let fringe_ok = (fringe - 0.25e6).abs() <= 0.01 * 0.25e6;

    let elapsed = start.elapsed().as_secs_f64();
    report(
        "criterion 6 qubit experiments",
        t1_ok && t2_ok && fringe_ok && elapsed < 300.0,
        &format!(
            "T1 fit = {:.2} us (goal 90 +- 4.5), T2* fit = {:.2} us (goal 19 +- 0.95), fringe = {:.4} MHz (goal 0.25 +- 1%), {elapsed:.0} s",
            t1_fit * 1e6,
            t2_fit * 1e6,
            fringe / 1e6
        ),
    );
}

// ---------------------------------------------------------------------------
// 7. Mixer calibration
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_mixer_calibration() {
    let params = MixerParams {
        lo_frequency_hz: 2e9,
        dc_offset_i: 0.003,
        dc_offset_q: 0.003,
        gain_imbalance: 0.02,
        phase_skew_rad: 0.02,
    };
    let correction = precompensate(&params, 250e6).unwrap();
    let after = measure_leakage(&params, 250e6, &correction).unwrap();
    let corrected_ok = after.lo_dbc <= -50.0 && after.image_dbc <= -50.0;

    let ideal =
        measure_leakage(&MixerParams::ideal(2e9), 250e6, &IqCorrection::identity()).unwrap();
    let ideal_ok = ideal.lo_dbc < -120.0 && ideal.image_dbc < -120.0;

    report(
        "criterion 7 mixer calibration",
        corrected_ok && ideal_ok,
        &format!(
            "corrected LO {:.1} dBc / image {:.1} dBc (goal <= -50), ideal floor LO {:.0} / image {:.0} dBc",
            after.lo_dbc, after.image_dbc, ideal.lo_dbc, ideal.image_dbc
        ),
    );
}

// ---------------------------------------------------------------------------
// 8. ADC metrics
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_adc_metrics() {
    let n = 16384;
    let tone: Vec<f64> = (0..n)
        .map(|k| (std::f64::consts::TAU * 6521.0 / n as f64 * k as f64).sin())
        .collect();
    let zeros = vec![0.0; n];

    let bench = adc_digitize(&tone, &zeros, &AdcModel::bench_characterization(1.0), 7).unwrap();
    let codes: Vec<f64> = bench.stream.i_codes().iter().map(|&c| c as f64).collect();
    let m = spectrum_metrics(&codes).unwrap();
    let bench_ok = (m.snr_db - 57.1).abs() <= 0.5 && (m.enob_bits - 9.2).abs() <= 0.1;

    let quiet = adc_digitize(&tone, &zeros, &AdcModel::noiseless(1.0), 7).unwrap();
    let codes: Vec<f64> = quiet.stream.i_codes().iter().map(|&c| c as f64).collect();
    let mq = spectrum_metrics(&codes).unwrap();
    let quiet_ok = (mq.enob_bits - 12.0).abs() <= 0.2;

    report(
        "criterion 8 adc metrics",
        bench_ok && quiet_ok,
        &format!(
            "398 MHz row: SNR = {:.2} dB (goal 57.1 +- 0.5), ENOB = {:.2} (goal 9.2 +- 0.1); noiseless ENOB = {:.2} (goal 12 +- 0.2)",
            m.snr_db, m.enob_bits, mq.enob_bits
        ),
    );
}

// ---------------------------------------------------------------------------
// 9. PLL determinism
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_pll_determinism() {
    let zero_delay = PllConfig {
        r1_divider: 1,
        zero_delay: true,
        input_frequency_hz: 25e6,
        output_frequency_hz: 2e9,
    };
    let mut phases = std::collections::BTreeSet::new();
    for seed in 0..1000 {
        phases.insert(pll_lock(&zero_delay, seed).unwrap());
    }
    let zd_ok = phases.len() == 1 && phases.contains(&0);

    let mut counts_ok = true;
    let mut detail = String::new();
    for n in [2u32, 3, 4] {
        let cfg = PllConfig { r1_divider: n, ..zero_delay.clone() };
        let mut observed = std::collections::BTreeSet::new();
        for seed in 0..(100 * n as u64).max(1000) {
            observed.insert(pll_lock(&cfg, seed).unwrap());
        }
        if observed.len() != n as usize {
            counts_ok = false;
        }
        detail.push_str(&format!("R1={n}: {} phases; ", observed.len()));
    }

    report(
        "criterion 9 pll determinism",
        zd_ok && counts_ok,
        &format!("zero-delay R1=1: single phase 0 over 1000 cycles; {detail}"),
    );
}

// ---------------------------------------------------------------------------
// 10. Multi-channel demodulation
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_multi_channel_demod() {
    let channels: Vec<f64> = (0..8).map(|k| 190e6 + 20e6 * k as f64).collect();
    let window = 4096usize;
    let fs = quelec::demod::SAMPLE_RATE_HZ;

    // 8-tone capture for the decimated-vs-full-rate comparison.
    let amps = [200.0, 150.0, 180.0, 220.0, 170.0, 160.0, 210.0, 190.0];
    let mut i = vec![0f64; window];
    let mut q = vec![0f64; window];
    for (c, &f) in channels.iter().enumerate() {
        for k in 0..window {
            let th = std::f64::consts::TAU * f * k as f64 / fs + c as f64;
            i[k] += amps[c] * th.cos();
            q[k] += amps[c] * th.sin();
        }
    }
    let stream = IQSampleStream::new(
        i.iter().map(|&v| v.round() as i16).collect(),
        q.iter().map(|&v| v.round() as i16).collect(),
        0,
    )
    .unwrap();
    let decimated = multi_channel_demod(&stream, &channels, window).unwrap();
    let mut err_sq = 0.0;
    let mut ref_sq = 0.0;
    for (c, &f) in channels.iter().enumerate() {
        let step = -std::f64::consts::TAU * f / fs;
        let oracle = (0..window)
            .map(|k| {
                Complex64::new(stream.i_codes()[k] as f64, stream.q_codes()[k] as f64)
                    * Complex64::from_polar(1.0, step * k as f64)
            })
            .sum::<Complex64>()
            / window as f64;
        let d = Complex64::new(decimated[c].0, decimated[c].1) - oracle;
        err_sq += d.norm_sqr();
        ref_sq += oracle.norm_sqr();
    }
    let rms = (err_sq / ref_sq).sqrt();
    let rms_ok = rms <= 0.01;

    // Isolation and rotating-phase circles through the selftest experiment.
    let selftest = run_toml("kind = \"demod_selftest\"\nseed = 12\n");
    let isolation = extra_f64(&selftest, "isolation_db");
    let isolation_ok = isolation >= 40.0;
    let circles_ok = selftest.extras["circles_monotone_ok"].as_bool() == Some(true);

    report(
        "criterion 10 multi-channel demod",
        rms_ok && isolation_ok && circles_ok,
        &format!(
            "decimated vs full-rate RMS = {:.4}% (goal <= 1%), isolation = {isolation:.1} dB (goal >= 40), rotating-phase circles monotone",
            rms * 100.0
        ),
    );
}
