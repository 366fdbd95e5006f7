//! Experiment configuration: a TOML document validated against an explicit
//! schema. Validation walks the whole document and reports every problem
//! (unknown keys, missing fields, bad types, dangling references) with a
//! path-style location, not just the first.

use std::fmt;
use std::path::Path;

use serde::Serialize;
use toml::{Table, Value};

use quelec::awg::{MixerParams, PulseEnvelope, PulseSequence, ScheduleEntry};
use quelec::demod::{AdcModel, AdcPerformancePoint};
use quelec::device::{BvgModel, QubitParams, TempDrift};
use quelec::timing::{ClockLink, ClockTopology, LatencyGroup, LatencyLedger};
use quelec::QubitState;

/// One validation problem with its location in the document.
#[derive(Debug, Clone, Serialize)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    OneTone,
    TwoTone,
    T1,
    Ramsey,
    JitterHistogram,
    FeedbackLatency,
    MixerCalibration,
    BudgetSweep,
    DemodSelftest,
}

impl ExperimentKind {
    pub fn parse(s: &str) -> Option<ExperimentKind> {
        Some(match s {
            "one_tone" => ExperimentKind::OneTone,
            "two_tone" => ExperimentKind::TwoTone,
            "t1" => ExperimentKind::T1,
            "ramsey" => ExperimentKind::Ramsey,
            "jitter_histogram" => ExperimentKind::JitterHistogram,
            "feedback_latency" => ExperimentKind::FeedbackLatency,
            "mixer_calibration" => ExperimentKind::MixerCalibration,
            "budget_sweep" => ExperimentKind::BudgetSweep,
            "demod_selftest" => ExperimentKind::DemodSelftest,
            _ => return None,
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::OneTone => "one_tone",
            ExperimentKind::TwoTone => "two_tone",
            ExperimentKind::T1 => "t1",
            ExperimentKind::Ramsey => "ramsey",
            ExperimentKind::JitterHistogram => "jitter_histogram",
            ExperimentKind::FeedbackLatency => "feedback_latency",
            ExperimentKind::MixerCalibration => "mixer_calibration",
            ExperimentKind::BudgetSweep => "budget_sweep",
            ExperimentKind::DemodSelftest => "demod_selftest",
        }
    }

    /// The sweep axis this experiment expects, if it sweeps.
    fn sweep_axis(&self) -> Option<&'static str> {
        match self {
            ExperimentKind::OneTone => Some("probe_hz"),
            ExperimentKind::TwoTone => Some("drive_hz"),
            ExperimentKind::T1 | ExperimentKind::Ramsey => Some("wait_s"),
            _ => None,
        }
    }
}

/// A linear sweep axis.
#[derive(Debug, Clone, Serialize)]
pub struct Sweep {
    pub name: String,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Sweep {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.start];
        }
        (0..self.points)
            .map(|k| {
                self.start + (self.stop - self.start) * k as f64 / (self.points - 1) as f64
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DeviceConfig {
    pub qubit: QubitParams,
    pub bias_volts: f64,
    pub bvg: Option<BvgModel>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReadoutConfig {
    /// RF probe frequency; defaults to the ground-state dip f_r - chi.
    pub frequency_hz: f64,
    pub if_frequency_hz: f64,
    pub duration_s: f64,
    pub amplitude_volts: f64,
    pub noise_rms_volts: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DriveConfig {
    pub amplitude: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RamseyConfig {
    pub detuning_hz: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct JitterConfig {
    /// Target channel-to-channel differential jitter to inject.
    pub differential_ps: f64,
    pub tone_hz: f64,
    pub capture_samples: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FeedbackConfig {
    pub input_state: QubitState,
    pub readout_ns: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetKind {
    Jitter,
    Sfdr,
    Bias,
}

#[derive(Debug, Clone, Serialize)]
pub struct BudgetConfig {
    pub kind: BudgetKind,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DemodSelftestConfig {
    pub channels: Vec<f64>,
    pub window: usize,
    pub repetitions: usize,
}

/// Fully validated and defaulted experiment description.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub shots: u32,
    pub sweep: Option<Sweep>,
    pub device: DeviceConfig,
    pub readout: ReadoutConfig,
    pub drive: DriveConfig,
    pub topology: ClockTopology,
    pub ledger: LatencyLedger,
    pub adc: AdcModel,
    pub mixer: MixerParams,
    pub mixer_if_hz: f64,
    pub sequence: Option<PulseSequence>,
    pub ramsey: RamseyConfig,
    pub jitter: JitterConfig,
    pub feedback: FeedbackConfig,
    pub budget: Option<BudgetConfig>,
    pub demod: DemodSelftestConfig,
}

// ---------------------------------------------------------------------------
// Validation machinery
// ---------------------------------------------------------------------------

struct Checker {
    issues: Vec<ConfigIssue>,
}

impl Checker {
    fn new() -> Checker {
        Checker { issues: Vec::new() }
    }

    fn issue(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.issues.push(ConfigIssue { path: path.into(), message: message.into() });
    }

    fn check_keys(&mut self, path: &str, table: &Table, allowed: &[&str]) {
        for key in table.keys() {
            if !allowed.contains(&key.as_str()) {
                self.issue(
                    format!("{path}{}{key}", if path.is_empty() { "" } else { "." }),
                    format!("unknown key (allowed: {})", allowed.join(", ")),
                );
            }
        }
    }

    fn table<'a>(&mut self, parent: &'a Table, path: &str, key: &str) -> Option<&'a Table> {
        match parent.get(key) {
            Some(Value::Table(t)) => Some(t),
            Some(_) => {
                self.issue(join(path, key), "expected a table");
                None
            }
            None => None,
        }
    }

    fn float(&mut self, table: &Table, path: &str, key: &str) -> Option<f64> {
        match table.get(key) {
            Some(Value::Float(f)) => Some(*f),
            Some(Value::Integer(i)) => Some(*i as f64),
            Some(_) => {
                self.issue(join(path, key), "expected a number");
                None
            }
            None => None,
        }
    }

    fn req_float(&mut self, table: &Table, path: &str, key: &str) -> Option<f64> {
        if !table.contains_key(key) {
            self.issue(join(path, key), "missing required field");
            return None;
        }
        self.float(table, path, key)
    }

    fn integer(&mut self, table: &Table, path: &str, key: &str) -> Option<i64> {
        match table.get(key) {
            Some(Value::Integer(i)) => Some(*i),
            Some(_) => {
                self.issue(join(path, key), "expected an integer");
                None
            }
            None => None,
        }
    }

    fn string<'a>(&mut self, table: &'a Table, path: &str, key: &str) -> Option<&'a str> {
        match table.get(key) {
            Some(Value::String(s)) => Some(s.as_str()),
            Some(_) => {
                self.issue(join(path, key), "expected a string");
                None
            }
            None => None,
        }
    }

    fn boolean(&mut self, table: &Table, path: &str, key: &str) -> Option<bool> {
        match table.get(key) {
            Some(Value::Boolean(b)) => Some(*b),
            Some(_) => {
                self.issue(join(path, key), "expected a boolean");
                None
            }
            None => None,
        }
    }

    fn array<'a>(&mut self, table: &'a Table, path: &str, key: &str) -> Option<&'a [Value]> {
        match table.get(key) {
            Some(Value::Array(a)) => Some(a.as_slice()),
            Some(_) => {
                self.issue(join(path, key), "expected an array");
                None
            }
            None => None,
        }
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

// ---------------------------------------------------------------------------
// Section parsers
// ---------------------------------------------------------------------------

fn parse_sweep(c: &mut Checker, table: &Table, kind: ExperimentKind) -> Option<Sweep> {
    c.check_keys("sweep", table, &["name", "start", "stop", "points"]);
    let name = c.string(table, "sweep", "name").map(str::to_string);
    if name.is_none() && !table.contains_key("name") {
        c.issue("sweep.name", "missing required field");
    }
    let start = c.req_float(table, "sweep", "start");
    let stop = c.req_float(table, "sweep", "stop");
    let points = match c.integer(table, "sweep", "points") {
        Some(p) if p >= 1 => Some(p as usize),
        Some(p) => {
            c.issue("sweep.points", format!("must be >= 1, got {p}"));
            None
        }
        None => {
            if !table.contains_key("points") {
                c.issue("sweep.points", "missing required field");
            }
            None
        }
    };
    if let (Some(expected), Some(actual)) = (kind.sweep_axis(), name.as_deref()) {
        if expected != actual {
            c.issue(
                "sweep.name",
                format!("{} sweeps {expected:?}, got {actual:?}", kind.as_str()),
            );
        }
    }
    Some(Sweep { name: name?, start: start?, stop: stop?, points: points? })
}

fn parse_device(c: &mut Checker, table: &Table) -> DeviceConfig {
    const KEYS: &[&str] = &[
        "f_min_hz",
        "modulation_hz",
        "flux_period_volts",
        "sweet_spot_volts",
        "t1_s",
        "t2_star_s",
        "f_r_hz",
        "kappa_hz",
        "chi_hz",
        "r_ohm",
        "m_henry",
        "rabi_hz_per_unit",
        "qnd_fidelity",
        "bias_volts",
        "bvg",
    ];
    c.check_keys("device", table, KEYS);
    let mut qubit = QubitParams::default();
    let path = "device";
    if let Some(v) = c.float(table, path, "f_min_hz") {
        qubit.f_min_hz = v;
    }
    if let Some(v) = c.float(table, path, "modulation_hz") {
        qubit.modulation_hz = v;
    }
    if let Some(v) = c.float(table, path, "flux_period_volts") {
        qubit.flux_period_volts = v;
    }
    if let Some(v) = c.float(table, path, "sweet_spot_volts") {
        qubit.sweet_spot_volts = v;
    }
    if let Some(v) = c.float(table, path, "t1_s") {
        qubit.t1_s = v;
    }
    if let Some(v) = c.float(table, path, "t2_star_s") {
        qubit.t2_star_s = v;
    }
    if let Some(v) = c.float(table, path, "f_r_hz") {
        qubit.f_r_hz = v;
    }
    if let Some(v) = c.float(table, path, "kappa_hz") {
        qubit.kappa_hz = v;
    }
    if let Some(v) = c.float(table, path, "chi_hz") {
        qubit.chi_hz = v;
    }
    if let Some(v) = c.float(table, path, "r_ohm") {
        qubit.r_ohm = v;
    }
    if let Some(v) = c.float(table, path, "m_henry") {
        qubit.m_henry = v;
    }
    if let Some(v) = c.float(table, path, "rabi_hz_per_unit") {
        qubit.rabi_hz_per_unit = v;
    }
    if let Some(v) = c.float(table, path, "qnd_fidelity") {
        qubit.qnd_fidelity = v;
    }
    if let Err(e) = qubit.validate() {
        c.issue("device", e.to_string());
    }
    let bias_volts = c.float(table, path, "bias_volts").unwrap_or(qubit.sweet_spot_volts);

    let bvg = c.table(table, "device", "bvg").map(|bvg_table| {
        let bvg_table = bvg_table.clone();
        c.check_keys(
            "device.bvg",
            &bvg_table,
            &["set_voltage", "noise_pp_volts", "drift_pp_volts_per_10h", "temp"],
        );
        let mut model = BvgModel::bench(bias_volts);
        if let Some(v) = c.float(&bvg_table, "device.bvg", "set_voltage") {
            model.set_voltage = v;
        }
        if let Some(v) = c.float(&bvg_table, "device.bvg", "noise_pp_volts") {
            model.noise_pp_volts = v;
        }
        if let Some(v) = c.float(&bvg_table, "device.bvg", "drift_pp_volts_per_10h") {
            model.drift_pp_volts_per_10h = v;
        }
        if let Some(temp) = c.table(&bvg_table, "device.bvg", "temp") {
            let temp = temp.clone();
            c.check_keys(
                "device.bvg.temp",
                &temp,
                &["coefficient_v_per_c", "swing_c", "period_s"],
            );
            model.temp = Some(TempDrift {
                coefficient_v_per_c: c
                    .req_float(&temp, "device.bvg.temp", "coefficient_v_per_c")
                    .unwrap_or(0.0),
                swing_c: c.req_float(&temp, "device.bvg.temp", "swing_c").unwrap_or(0.0),
                period_s: c
                    .req_float(&temp, "device.bvg.temp", "period_s")
                    .unwrap_or(86_400.0),
            });
        }
        if let Err(e) = model.validate() {
            c.issue("device.bvg", e.to_string());
        }
        model
    });

    DeviceConfig { qubit, bias_volts, bvg }
}

fn parse_readout(c: &mut Checker, table: &Table, device: &DeviceConfig) -> ReadoutConfig {
    const KEYS: &[&str] = &[
        "frequency_hz",
        "if_frequency_hz",
        "duration_s",
        "amplitude_volts",
        "noise_rms_volts",
    ];
    c.check_keys("readout", table, KEYS);
    let default_probe = device.qubit.f_r_hz - device.qubit.chi_hz;
    let duration = c.float(table, "readout", "duration_s").unwrap_or(48e-9);
    if duration <= 0.0 {
        c.issue("readout.duration_s", format!("must be > 0, got {duration}"));
    }
    ReadoutConfig {
        frequency_hz: c.float(table, "readout", "frequency_hz").unwrap_or(default_probe),
        if_frequency_hz: c.float(table, "readout", "if_frequency_hz").unwrap_or(250e6),
        duration_s: duration,
        amplitude_volts: c.float(table, "readout", "amplitude_volts").unwrap_or(0.4),
        noise_rms_volts: c.float(table, "readout", "noise_rms_volts").unwrap_or(0.01),
    }
}

fn parse_topology(c: &mut Checker, table: &Table) -> Option<ClockTopology> {
    c.check_keys("topology", table, &["root", "reference_period_ps", "nodes", "links"]);
    let root = c.string(table, "topology", "root")?.to_string();
    let period = c.integer(table, "topology", "reference_period_ps").unwrap_or(40_000);
    let mut nodes = Vec::new();
    if let Some(items) = c.array(table, "topology", "nodes") {
        for (k, item) in items.iter().enumerate() {
            match item.as_str() {
                Some(s) => nodes.push(s.to_string()),
                None => c.issue(format!("topology.nodes[{k}]"), "expected a string"),
            }
        }
    }
    let mut links = Vec::new();
    if let Some(items) = c.array(table, "topology", "links") {
        for (k, item) in items.iter().enumerate() {
            let path = format!("topology.links[{k}]");
            match item.as_table() {
                Some(t) => {
                    c.check_keys(&path, t, &["parent", "child", "skew_ps", "jitter_sigma_ps"]);
                    let parent = c.string(t, &path, "parent").map(str::to_string);
                    let child = c.string(t, &path, "child").map(str::to_string);
                    let skew = c.integer(t, &path, "skew_ps").unwrap_or(0);
                    let sigma = c.float(t, &path, "jitter_sigma_ps").unwrap_or(0.0);
                    if let (Some(parent), Some(child)) = (parent, child) {
                        links.push(ClockLink {
                            parent,
                            child,
                            skew_ps: skew,
                            jitter_sigma_ps: sigma,
                        });
                    }
                }
                None => c.issue(path, "expected a table"),
            }
        }
    }
    let topology =
        ClockTopology { root, nodes, links, reference_period_ps: period };
    if let Err(e) = topology.validate() {
        c.issue("topology", e.to_string());
    }
    Some(topology)
}

fn parse_ledger(c: &mut Checker, table: &Table) -> LatencyLedger {
    c.check_keys("ledger", table, &["electronics", "readout", "control_pulse"]);
    let mut ledger = LatencyLedger::new();
    for (group, key) in [
        (LatencyGroup::Electronics, "electronics"),
        (LatencyGroup::Readout, "readout"),
        (LatencyGroup::ControlPulse, "control_pulse"),
    ] {
        if let Some(items) = c.array(table, "ledger", key) {
            for (k, item) in items.iter().enumerate() {
                let path = format!("ledger.{key}[{k}]");
                match item.as_table() {
                    Some(t) => {
                        c.check_keys(&path, t, &["name", "duration_ps"]);
                        let name = c.string(t, &path, "name").map(str::to_string);
                        let duration = c.integer(t, &path, "duration_ps");
                        match (name, duration) {
                            (Some(n), Some(d)) => ledger.record(group, &n, d),
                            (None, _) => c.issue(format!("{path}.name"), "missing required field"),
                            (_, None) => {
                                c.issue(format!("{path}.duration_ps"), "missing required field")
                            }
                        }
                    }
                    None => c.issue(path, "expected a table"),
                }
            }
        }
    }
    ledger
}

fn parse_adc(c: &mut Checker, table: &Table) -> AdcModel {
    c.check_keys("adc", table, &["full_scale_volts", "noiseless", "performance"]);
    let full_scale = c.float(table, "adc", "full_scale_volts").unwrap_or(1.0);
    let noiseless = c.boolean(table, "adc", "noiseless").unwrap_or(false);
    let mut model = if noiseless {
        AdcModel::noiseless(full_scale)
    } else {
        AdcModel::bench_characterization(full_scale)
    };
    if let Some(items) = c.array(table, "adc", "performance") {
        let mut rows = Vec::new();
        for (k, item) in items.iter().enumerate() {
            let path = format!("adc.performance[{k}]");
            match item.as_table() {
                Some(t) => {
                    c.check_keys(&path, t, &["frequency_hz", "snr_db", "thd_dbc", "enob_bits"]);
                    rows.push(AdcPerformancePoint {
                        frequency_hz: c.req_float(t, &path, "frequency_hz").unwrap_or(0.0),
                        snr_db: c.req_float(t, &path, "snr_db").unwrap_or(60.0),
                        thd_dbc: c.float(t, &path, "thd_dbc").unwrap_or(-65.0),
                        enob_bits: c.float(t, &path, "enob_bits").unwrap_or(9.4),
                    });
                }
                None => c.issue(path, "expected a table"),
            }
        }
        model.performance = rows;
    }
    if let Err(e) = model.validate() {
        c.issue("adc", e.to_string());
    }
    model
}

fn parse_mixer(c: &mut Checker, table: &Table) -> (MixerParams, f64) {
    const KEYS: &[&str] = &[
        "lo_frequency_hz",
        "dc_offset_i",
        "dc_offset_q",
        "gain_imbalance",
        "phase_skew_rad",
        "if_frequency_hz",
    ];
    c.check_keys("mixer", table, KEYS);
    let params = MixerParams {
        lo_frequency_hz: c.float(table, "mixer", "lo_frequency_hz").unwrap_or(2e9),
        dc_offset_i: c.float(table, "mixer", "dc_offset_i").unwrap_or(0.003),
        dc_offset_q: c.float(table, "mixer", "dc_offset_q").unwrap_or(0.003),
        gain_imbalance: c.float(table, "mixer", "gain_imbalance").unwrap_or(0.02),
        phase_skew_rad: c.float(table, "mixer", "phase_skew_rad").unwrap_or(0.02),
    };
    if let Err(e) = params.validate() {
        c.issue("mixer", e.to_string());
    }
    let if_hz = c.float(table, "mixer", "if_frequency_hz").unwrap_or(250e6);
    (params, if_hz)
}

fn parse_sequence(c: &mut Checker, table: &Table) -> Option<PulseSequence> {
    c.check_keys("sequence", table, &["memory_budget_bits", "envelopes", "schedule"]);
    let mut envelopes = Vec::new();
    if let Some(items) = c.array(table, "sequence", "envelopes") {
        for (k, item) in items.iter().enumerate() {
            let path = format!("sequence.envelopes[{k}]");
            match item.as_table() {
                Some(t) => {
                    c.check_keys(&path, t, &["name", "codes"]);
                    let name = match c.string(t, &path, "name") {
                        Some(n) => n.to_string(),
                        None => {
                            c.issue(format!("{path}.name"), "missing required field");
                            continue;
                        }
                    };
                    let mut codes = Vec::new();
                    if let Some(values) = c.array(t, &path, "codes") {
                        for (j, v) in values.iter().enumerate() {
                            match v.as_integer() {
                                Some(code) if (-8192..=8191).contains(&code) => {
                                    codes.push(code as i16)
                                }
                                Some(code) => c.issue(
                                    format!("{path}.codes[{j}]"),
                                    format!("code {code} outside the signed 14-bit range"),
                                ),
                                None => c.issue(
                                    format!("{path}.codes[{j}]"),
                                    "expected an integer",
                                ),
                            }
                        }
                    } else {
                        c.issue(format!("{path}.codes"), "missing required field");
                    }
                    match PulseEnvelope::new(name, codes) {
                        Ok(env) => envelopes.push(env),
                        Err(e) => c.issue(path, e.to_string()),
                    }
                }
                None => c.issue(path, "expected a table"),
            }
        }
    }
    let mut schedule = Vec::new();
    if let Some(items) = c.array(table, "sequence", "schedule") {
        for (k, item) in items.iter().enumerate() {
            let path = format!("sequence.schedule[{k}]");
            match item.as_table() {
                Some(t) => {
                    c.check_keys(&path, t, &["envelope", "offset_samples", "scale", "phase_tag"]);
                    let envelope = match c.string(t, &path, "envelope") {
                        Some(n) => n.to_string(),
                        None => {
                            c.issue(format!("{path}.envelope"), "missing required field");
                            continue;
                        }
                    };
                    if !envelopes.iter().any(|e| e.name == envelope) {
                        c.issue(
                            format!("{path}.envelope"),
                            format!("dangling reference to undefined envelope {envelope:?}"),
                        );
                    }
                    let offset = c.integer(t, &path, "offset_samples").unwrap_or(0);
                    if offset < 0 {
                        c.issue(
                            format!("{path}.offset_samples"),
                            format!("must be >= 0, got {offset}"),
                        );
                    }
                    let scale = c.float(t, &path, "scale").unwrap_or(1.0);
                    if !(-1.0..=1.0).contains(&scale) {
                        c.issue(format!("{path}.scale"), format!("must be in [-1, 1], got {scale}"));
                    }
                    schedule.push(ScheduleEntry {
                        envelope,
                        offset_samples: offset.max(0) as u64,
                        scale,
                        phase_tag: c.string(t, &path, "phase_tag").unwrap_or("").to_string(),
                    });
                }
                None => c.issue(path, "expected a table"),
            }
        }
    }
    let mut sequence = PulseSequence::new(envelopes, schedule);
    if let Some(bits) = c.integer(table, "sequence", "memory_budget_bits") {
        if bits <= 0 {
            c.issue("sequence.memory_budget_bits", format!("must be > 0, got {bits}"));
        } else {
            sequence.memory_budget_bits = bits as u64;
        }
    }
    if sequence.storage_bits() > sequence.memory_budget_bits {
        c.issue(
            "sequence",
            format!(
                "stored size {} bits exceeds the {} bit budget",
                sequence.storage_bits(),
                sequence.memory_budget_bits
            ),
        );
    }
    Some(sequence)
}

// ---------------------------------------------------------------------------
// Top-level parsing
// ---------------------------------------------------------------------------

/// Parse and fully validate a config document. Returns the normalized config
/// or every issue found.
pub fn parse(text: &str) -> Result<ExperimentConfig, Vec<ConfigIssue>> {
    let table: Table = match text.parse() {
        Ok(t) => t,
        Err(e) => {
            return Err(vec![ConfigIssue {
                path: "(document)".into(),
                message: format!("TOML syntax error: {e}"),
            }])
        }
    };
    let mut c = Checker::new();

    let kind = match c.string(&table, "", "kind") {
        Some(s) => match ExperimentKind::parse(s) {
            Some(k) => Some(k),
            None => {
                c.issue("kind", format!("unknown experiment kind {s:?}"));
                None
            }
        },
        None => {
            if !table.contains_key("kind") {
                c.issue("kind", "missing required field");
            }
            None
        }
    };

    let mut allowed: Vec<&str> = vec![
        "kind", "seed", "shots", "device", "readout", "drive", "topology", "ledger", "adc",
        "mixer", "sequence",
    ];
    match kind {
        Some(ExperimentKind::OneTone)
        | Some(ExperimentKind::TwoTone)
        | Some(ExperimentKind::T1) => allowed.push("sweep"),
        Some(ExperimentKind::Ramsey) => allowed.extend(["sweep", "ramsey"]),
        Some(ExperimentKind::JitterHistogram) => allowed.push("jitter"),
        Some(ExperimentKind::FeedbackLatency) => allowed.push("feedback"),
        Some(ExperimentKind::BudgetSweep) => allowed.push("budget"),
        Some(ExperimentKind::DemodSelftest) => allowed.push("demod"),
        Some(ExperimentKind::MixerCalibration) | None => {}
    }
    c.check_keys("", &table, &allowed);

    // Reproducibility is mandatory: the seed has no default.
    let seed = match c.integer(&table, "", "seed") {
        Some(s) if s >= 0 => Some(s as u64),
        Some(s) => {
            c.issue("seed", format!("must be >= 0, got {s}"));
            None
        }
        None => {
            if !table.contains_key("seed") {
                c.issue("seed", "missing required field");
            }
            None
        }
    };

    let default_shots = match kind {
        Some(ExperimentKind::JitterHistogram) => 5000,
        _ => 500,
    };
    let shots = match c.integer(&table, "", "shots") {
        Some(s) if s >= 1 => s as u32,
        Some(s) => {
            c.issue("shots", format!("must be >= 1, got {s}"));
            default_shots
        }
        None => default_shots,
    };

    let sweep = match (kind.and_then(|k| k.sweep_axis()), c.table(&table, "", "sweep")) {
        (Some(_), Some(sweep_table)) => {
            let sweep_table = sweep_table.clone();
            parse_sweep(&mut c, &sweep_table, kind.unwrap())
        }
        (Some(axis), None) => {
            c.issue("sweep", format!("missing required section (axis {axis:?})"));
            None
        }
        (None, Some(_)) => None, // flagged as unknown key above
        (None, None) => None,
    };

    let device = match c.table(&table, "", "device") {
        Some(t) => {
            let t = t.clone();
            parse_device(&mut c, &t)
        }
        None => DeviceConfig {
            qubit: QubitParams::default(),
            bias_volts: 0.0,
            bvg: None,
        },
    };

    let readout = match c.table(&table, "", "readout") {
        Some(t) => {
            let t = t.clone();
            parse_readout(&mut c, &t, &device)
        }
        None => ReadoutConfig {
            frequency_hz: device.qubit.f_r_hz - device.qubit.chi_hz,
            if_frequency_hz: 250e6,
            duration_s: 48e-9,
            amplitude_volts: 0.4,
            noise_rms_volts: 0.01,
        },
    };

    let drive = match c.table(&table, "", "drive") {
        Some(t) => {
            let t = t.clone();
            c.check_keys("drive", &t, &["amplitude"]);
            let amplitude = c.float(&t, "drive", "amplitude").unwrap_or(1.0);
            if !(0.0..=1.0).contains(&amplitude) {
                c.issue("drive.amplitude", format!("must be in [0, 1], got {amplitude}"));
            }
            DriveConfig { amplitude }
        }
        None => DriveConfig { amplitude: 1.0 },
    };

    let topology = match c.table(&table, "", "topology") {
        Some(t) => {
            let t = t.clone();
            parse_topology(&mut c, &t)
        }
        None => None,
    }
    .unwrap_or_else(|| {
        ClockTopology::star(
            "tcm",
            &[("awg1", 0, 0.0), ("awg2", 0, 0.0), ("daq", 0, 0.0)],
            40_000,
        )
    });

    let ledger = match c.table(&table, "", "ledger") {
        Some(t) => {
            let t = t.clone();
            parse_ledger(&mut c, &t)
        }
        None => LatencyLedger::default_feedback_budget(),
    };

    let adc = match c.table(&table, "", "adc") {
        Some(t) => {
            let t = t.clone();
            parse_adc(&mut c, &t)
        }
        None => AdcModel::bench_characterization(1.0),
    };

    let (mixer, mixer_if_hz) = match c.table(&table, "", "mixer") {
        Some(t) => {
            let t = t.clone();
            parse_mixer(&mut c, &t)
        }
        None => (
            MixerParams {
                lo_frequency_hz: 2e9,
                dc_offset_i: 0.003,
                dc_offset_q: 0.003,
                gain_imbalance: 0.02,
                phase_skew_rad: 0.02,
            },
            250e6,
        ),
    };

    let sequence = match c.table(&table, "", "sequence") {
        Some(t) => {
            let t = t.clone();
            parse_sequence(&mut c, &t)
        }
        None => None,
    };

    let ramsey = match c.table(&table, "", "ramsey") {
        Some(t) => {
            let t = t.clone();
            c.check_keys("ramsey", &t, &["detuning_hz"]);
            RamseyConfig { detuning_hz: c.float(&t, "ramsey", "detuning_hz").unwrap_or(0.25e6) }
        }
        None => RamseyConfig { detuning_hz: 0.25e6 },
    };

    let jitter = match c.table(&table, "", "jitter") {
        Some(t) => {
            let t = t.clone();
            c.check_keys("jitter", &t, &["differential_ps", "tone_hz", "capture_samples"]);
            let capture = c.integer(&t, "jitter", "capture_samples").unwrap_or(1024);
            if capture < 64 {
                c.issue("jitter.capture_samples", format!("must be >= 64, got {capture}"));
            }
            JitterConfig {
                differential_ps: c.float(&t, "jitter", "differential_ps").unwrap_or(5.0),
                tone_hz: c.float(&t, "jitter", "tone_hz").unwrap_or(250e6),
                capture_samples: capture.max(64) as usize,
            }
        }
        None => JitterConfig { differential_ps: 5.0, tone_hz: 250e6, capture_samples: 1024 },
    };

    let feedback = match c.table(&table, "", "feedback") {
        Some(t) => {
            let t = t.clone();
            c.check_keys("feedback", &t, &["input_state", "readout_ns"]);
            let state = match c.string(&t, "feedback", "input_state") {
                Some("ground") => QubitState::Ground,
                Some("excited") | None => QubitState::Excited,
                Some(other) => {
                    c.issue(
                        "feedback.input_state",
                        format!("expected \"ground\" or \"excited\", got {other:?}"),
                    );
                    QubitState::Excited
                }
            };
            FeedbackConfig {
                input_state: state,
                readout_ns: c.integer(&t, "feedback", "readout_ns").unwrap_or(48),
            }
        }
        None => FeedbackConfig { input_state: QubitState::Excited, readout_ns: 48 },
    };

    let budget = match c.table(&table, "", "budget") {
        Some(t) => {
            let t = t.clone();
            c.check_keys("budget", &t, &["kind", "start", "stop", "points"]);
            let budget_kind = match c.string(&t, "budget", "kind") {
                Some("jitter") => Some(BudgetKind::Jitter),
                Some("sfdr") => Some(BudgetKind::Sfdr),
                Some("bias") => Some(BudgetKind::Bias),
                Some(other) => {
                    c.issue("budget.kind", format!("expected jitter|sfdr|bias, got {other:?}"));
                    None
                }
                None => {
                    c.issue("budget.kind", "missing required field");
                    None
                }
            };
            let start = c.req_float(&t, "budget", "start");
            let stop = c.req_float(&t, "budget", "stop");
            let points = c.integer(&t, "budget", "points").unwrap_or(20).max(1) as usize;
            match (budget_kind, start, stop) {
                (Some(kind), Some(start), Some(stop)) => {
                    Some(BudgetConfig { kind, start, stop, points })
                }
                _ => None,
            }
        }
        None => None,
    };
    if kind == Some(ExperimentKind::BudgetSweep) && budget.is_none() && !table.contains_key("budget")
    {
        c.issue("budget", "missing required section");
    }

    let demod = match c.table(&table, "", "demod") {
        Some(t) => {
            let t = t.clone();
            c.check_keys("demod", &t, &["channels", "window", "repetitions"]);
            let mut channels = Vec::new();
            if let Some(items) = c.array(&t, "demod", "channels") {
                for (k, item) in items.iter().enumerate() {
                    match item {
                        Value::Float(f) => channels.push(*f),
                        Value::Integer(i) => channels.push(*i as f64),
                        _ => c.issue(format!("demod.channels[{k}]"), "expected a number"),
                    }
                }
            }
            if channels.is_empty() {
                channels = default_channels();
            }
            DemodSelftestConfig {
                channels,
                window: c.integer(&t, "demod", "window").unwrap_or(4096).max(4) as usize,
                repetitions: c.integer(&t, "demod", "repetitions").unwrap_or(16).max(1) as usize,
            }
        }
        None => DemodSelftestConfig {
            channels: default_channels(),
            window: 4096,
            repetitions: 16,
        },
    };

    let (Some(kind), Some(seed)) = (kind, seed) else {
        return Err(c.issues);
    };
    if !c.issues.is_empty() {
        return Err(c.issues);
    }
    Ok(ExperimentConfig {
        kind,
        seed,
        shots,
        sweep,
        device,
        readout,
        drive,
        topology,
        ledger,
        adc,
        mixer,
        mixer_if_hz,
        sequence,
        ramsey,
        jitter,
        feedback,
        budget,
        demod,
    })
}

fn default_channels() -> Vec<f64> {
    (0..8).map(|k| 190e6 + 20e6 * k as f64).collect()
}

/// Load and validate a config file.
pub fn load(path: &Path) -> Result<(ExperimentConfig, String), Vec<ConfigIssue>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        vec![ConfigIssue { path: path.display().to_string(), message: format!("cannot read: {e}") }]
    })?;
    parse(&text).map(|cfg| (cfg, text))
}
