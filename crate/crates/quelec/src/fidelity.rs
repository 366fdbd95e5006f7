//! Gate-fidelity and noise-budget calculators: single-qubit rotation
//! unitaries, the average gate fidelity of one unitary against another, and
//! the translations jitter -> phase error -> fidelity, spurious drive (SFDR)
//! -> fidelity, and flux precision -> DC-bias precision.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Magnetic flux quantum, Wb.
pub const PHI0_WB: f64 = 2.067833848e-15;

type C = Complex64;

#[derive(Debug, Error, PartialEq)]
pub enum FidelityError {
    #[error("matrix is not unitary: ||U^H U - I|| = {0:.3e}")]
    NotUnitary(f64),
    #[error("target fidelity {0} outside the reachable range (1/3, 1]")]
    TargetOutOfRange(f64),
    #[error("IF frequency must be > 0, got {0} Hz")]
    BadFrequency(f64),
    #[error("spurious-drive spec invalid: {0}")]
    BadSpec(String),
    #[error("bias budget values must be positive (flux {flux}, R {r_ohm}, M {m_henry})")]
    BadBudget { flux: f64, r_ohm: f64, m_henry: f64 },
}

// ---------------------------------------------------------------------------
// Unitary2
// ---------------------------------------------------------------------------

/// A 2x2 complex matrix verified unitary on construction (1e-12 tolerance).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unitary2 {
    m: [[C; 2]; 2],
}

impl Unitary2 {
    pub fn new(m: [[C; 2]; 2]) -> Result<Unitary2, FidelityError> {
        let u = Unitary2 { m };
        let p = u.adjoint_mul(&u);
        let mut dev: f64 = 0.0;
        for r in 0..2 {
            for c in 0..2 {
                let expect = if r == c { C::new(1.0, 0.0) } else { C::new(0.0, 0.0) };
                dev = dev.max((p[r][c] - expect).norm());
            }
        }
        if dev > 1e-12 {
            return Err(FidelityError::NotUnitary(dev));
        }
        Ok(u)
    }

    pub fn identity() -> Unitary2 {
        Unitary2 {
            m: [
                [C::new(1.0, 0.0), C::new(0.0, 0.0)],
                [C::new(0.0, 0.0), C::new(1.0, 0.0)],
            ],
        }
    }

    pub fn matrix(&self) -> &[[C; 2]; 2] {
        &self.m
    }

    /// self^H * other, as a raw matrix.
    fn adjoint_mul(&self, other: &Unitary2) -> [[C; 2]; 2] {
        let a = &self.m;
        let b = &other.m;
        let mut out = [[C::new(0.0, 0.0); 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                out[r][c] = a[0][r].conj() * b[0][c] + a[1][r].conj() * b[1][c];
            }
        }
        out
    }

    pub fn mul(&self, other: &Unitary2) -> Unitary2 {
        let a = &self.m;
        let b = &other.m;
        let mut out = [[C::new(0.0, 0.0); 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                out[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c];
            }
        }
        Unitary2 { m: out }
    }

    pub fn adjoint(&self) -> Unitary2 {
        let a = &self.m;
        Unitary2 {
            m: [
                [a[0][0].conj(), a[1][0].conj()],
                [a[0][1].conj(), a[1][1].conj()],
            ],
        }
    }

    pub fn trace(&self) -> C {
        self.m[0][0] + self.m[1][1]
    }

    /// Apply to a state vector.
    pub fn apply(&self, v: [C; 2]) -> [C; 2] {
        [
            self.m[0][0] * v[0] + self.m[0][1] * v[1],
            self.m[1][0] * v[0] + self.m[1][1] * v[1],
        ]
    }
}

/// exp[-i (ax. sx + ay. sy + az. sz)] by the closed form
/// cos(r) I - i sin(r) (n . sigma), r = |a|.
pub fn pauli_exponential(ax: f64, ay: f64, az: f64) -> Unitary2 {
    let r = (ax * ax + ay * ay + az * az).sqrt();
    let (c, s) = if r == 0.0 { (1.0, 0.0) } else { (r.cos(), r.sin() / r) };
    // a.sigma = [[az, ax - i ay], [ax + i ay, -az]]; multiply by -i sin(r)/r.
    let m = [
        [C::new(c, -s * az), C::new(-s * ay, -s * ax)],
        [C::new(s * ay, -s * ax), C::new(c, s * az)],
    ];
    // Construction is exact up to float rounding; the unitarity check is a
    // cheap guard against NaN inputs.
    Unitary2::new(m).expect("closed-form Pauli exponential is unitary")
}

/// Rotation by `theta` about the equatorial axis at angle `phi` from x:
/// exp[-i (theta/2)(cos(phi) sx + sin(phi) sy)].
pub fn rotation_unitary(theta_rad: f64, phi_rad: f64) -> Unitary2 {
    let half = 0.5 * theta_rad;
    pauli_exponential(half * phi_rad.cos(), half * phi_rad.sin(), 0.0)
}

// ---------------------------------------------------------------------------
// Gate fidelity
// ---------------------------------------------------------------------------

/// Average gate fidelity of `u1` against target `u2`:
/// (Tr[U1 U2^H U2 U1^H] + |Tr[U2^H U1]|^2) / (d(d+1)), d = 2.
///
/// For unitaries the first trace is d, so this reduces to
/// (2 + |Tr[U2^H U1]|^2) / 6; both routes are evaluated and must agree.
pub fn gate_fidelity(u1: &Unitary2, u2: &Unitary2) -> f64 {
    let v = Unitary2 { m: u2.adjoint_mul(u1) }; // U2^H U1
    let t = v.trace().norm_sqr();
    let general = {
        let a = u1.mul(&u2.adjoint()); // U1 U2^H
        let prod = a.mul(&a.adjoint()); // (U1 U2^H)(U2 U1^H)
        (prod.trace().re + t) / 6.0
    };
    let reduced = (2.0 + t) / 6.0;
    assert!(
        (general - reduced).abs() < 1e-12,
        "fidelity forms disagree: {general} vs {reduced}"
    );
    reduced
}

// ---------------------------------------------------------------------------
// Jitter -> fidelity
// ---------------------------------------------------------------------------

/// Phase error and pi-pulse gate fidelity produced by a timing jitter at a
/// given IF frequency: phi = 2 pi f_if jitter, F = (2 + 4 cos^2 phi)/6.
pub fn jitter_to_fidelity(jitter_s: f64, f_if_hz: f64) -> Result<(f64, f64), FidelityError> {
    if f_if_hz <= 0.0 {
        return Err(FidelityError::BadFrequency(f_if_hz));
    }
    let phase = std::f64::consts::TAU * f_if_hz * jitter_s;
    let f = gate_fidelity(&rotation_unitary(std::f64::consts::PI, phase), &rotation_unitary(std::f64::consts::PI, 0.0));
    Ok((phase, f))
}

/// Largest jitter whose pi-pulse fidelity still reaches `target_fidelity`,
/// solved by bisection on the phase to 1e-15 rad.
pub fn jitter_for_fidelity(target_fidelity: f64, f_if_hz: f64) -> Result<f64, FidelityError> {
    if f_if_hz <= 0.0 {
        return Err(FidelityError::BadFrequency(f_if_hz));
    }
    if !(target_fidelity > 1.0 / 3.0 && target_fidelity <= 1.0) {
        return Err(FidelityError::TargetOutOfRange(target_fidelity));
    }
    let fidelity_of = |phi: f64| (2.0 + 4.0 * phi.cos().powi(2)) / 6.0;
    // F is monotone decreasing on [0, pi/2].
    let (mut lo, mut hi) = (0.0f64, std::f64::consts::FRAC_PI_2);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if fidelity_of(mid) >= target_fidelity {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let phi = 0.5 * (lo + hi);
    Ok(phi / (std::f64::consts::TAU * f_if_hz))
}

// ---------------------------------------------------------------------------
// Spurious drive -> fidelity
// ---------------------------------------------------------------------------

/// A spurious tone riding on the control drive at `m` times its amplitude.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SpuriousDriveSpec {
    /// Amplitude ratio m of the spurious signal to the main control signal.
    pub spur_ratio: f64,
    /// IF angular frequency omega_IF, rad/s.
    pub omega_if_rad_s: f64,
    /// Rabi angular frequency Omega of the main drive, rad/s.
    pub rabi_rad_s: f64,
    /// Rotation angle theta of the gate; gate time t = theta/Omega.
    pub theta_rad: f64,
}

impl SpuriousDriveSpec {
    /// Reference operating point: Omega = 2 pi x 50 MHz, omega_IF = 2 pi x
    /// 100 MHz, theta = pi (a 10 ns pi-pulse).
    pub fn reference(spur_ratio: f64) -> SpuriousDriveSpec {
        SpuriousDriveSpec {
            spur_ratio,
            omega_if_rad_s: std::f64::consts::TAU * 100e6,
            rabi_rad_s: std::f64::consts::TAU * 50e6,
            theta_rad: std::f64::consts::PI,
        }
    }

    pub fn validate(&self) -> Result<(), FidelityError> {
        if self.spur_ratio < 0.0 {
            return Err(FidelityError::BadSpec(format!("m must be >= 0, got {}", self.spur_ratio)));
        }
        if self.rabi_rad_s <= 0.0 {
            return Err(FidelityError::BadSpec(format!(
                "Rabi frequency must be > 0, got {}",
                self.rabi_rad_s
            )));
        }
        Ok(())
    }

    /// Gate time t = theta / Omega, seconds.
    pub fn gate_time_s(&self) -> f64 {
        self.theta_rad / self.rabi_rad_s
    }

    pub fn sfdr_dbc(&self) -> f64 {
        20.0 * self.spur_ratio.log10()
    }

    pub fn from_sfdr_dbc(sfdr_dbc: f64) -> SpuriousDriveSpec {
        SpuriousDriveSpec::reference(10f64.powf(sfdr_dbc / 20.0))
    }
}

/// Fidelity of the spurious-drive rotation
/// U1 = exp[-i(omega_IF sz/2 + m Omega sx/2) t] against the pure phase
/// evolution U2 = exp[-i omega_IF sz t / 2], at the nominal gate time.
pub fn spurious_fidelity(spec: &SpuriousDriveSpec) -> Result<f64, FidelityError> {
    spec.validate()?;
    let t = spec.gate_time_s();
    Ok(spurious_fidelity_at_phase(spec, spec.omega_if_rad_s * t))
}

/// Same pair of unitaries with the accumulated carrier phase omega_IF*t
/// forced to `phase_rad` while m*Omega*t stays fixed.
fn spurious_fidelity_at_phase(spec: &SpuriousDriveSpec, phase_rad: f64) -> f64 {
    let b = 0.5 * spec.spur_ratio * spec.rabi_rad_s * spec.gate_time_s();
    let a = 0.5 * phase_rad;
    let u1 = pauli_exponential(b, 0.0, a);
    let u2 = pauli_exponential(0.0, 0.0, a);
    gate_fidelity(&u1, &u2)
}

/// Worst-case spurious-drive fidelity over the carrier phase.
///
/// The nominal operating point has omega_IF*t = 2 pi exactly, where the
/// detuned spurious rotation echoes out almost perfectly; a fidelity spec
/// must hold for every phase relation, so the carrier phase is scanned over
/// one full turn added to the nominal value (m Omega t held fixed) and the
/// minimum returned.
pub fn spurious_fidelity_worst_case(
    spec: &SpuriousDriveSpec,
    scan_points: usize,
) -> Result<f64, FidelityError> {
    spec.validate()?;
    let nominal = spec.omega_if_rad_s * spec.gate_time_s();
    let mut worst = f64::INFINITY;
    for k in 0..scan_points.max(1) {
        let chi = std::f64::consts::TAU * k as f64 / scan_points.max(1) as f64;
        worst = worst.min(spurious_fidelity_at_phase(spec, nominal + chi));
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// DC bias precision
// ---------------------------------------------------------------------------

/// Flux-precision requirement expressed through the bias-line circuit.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BiasBudget {
    /// Required flux precision as a fraction of the flux quantum.
    pub flux_precision: f64,
    pub r_ohm: f64,
    pub m_henry: f64,
}

impl BiasBudget {
    pub fn validate(&self) -> Result<(), FidelityError> {
        if self.flux_precision <= 0.0 || self.r_ohm <= 0.0 || self.m_henry <= 0.0 {
            return Err(FidelityError::BadBudget {
                flux: self.flux_precision,
                r_ohm: self.r_ohm,
                m_henry: self.m_henry,
            });
        }
        Ok(())
    }
}

/// Voltage precision delta_V = flux_precision * Phi0 * R / M implied by a
/// flux-precision requirement.
pub fn bias_precision_volts(budget: &BiasBudget) -> Result<f64, FidelityError> {
    budget.validate()?;
    Ok(budget.flux_precision * PHI0_WB * budget.r_ohm / budget.m_henry)
}

/// Inverse map: flux precision (fraction of Phi0) reached by a voltage
/// precision on the same bias line.
pub fn flux_precision_for_voltage(
    delta_v: f64,
    r_ohm: f64,
    m_henry: f64,
) -> Result<f64, FidelityError> {
    if r_ohm <= 0.0 || m_henry <= 0.0 {
        return Err(FidelityError::BadBudget { flux: f64::NAN, r_ohm, m_henry });
    }
    Ok(delta_v * m_henry / (PHI0_WB * r_ohm))
}
