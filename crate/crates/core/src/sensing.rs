//! Virtual sensors.
//!
//! Spring lengths travel the full signal path of the hardware: geometric
//! length, coil inductance (inverse calibration), tank-circuit frequency,
//! inductance recovered from the frequency, quartic calibration back to a
//! length, gap perturbation, Gaussian noise and finally 0.4 mm quantisation.
//! IMUs read their pad orientation through a fixed mount rotation, the read is
//! perturbed in the IMU's own frame and re-expressed as pad Euler angles.

use std::f64::consts::PI;
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{euler_to_rotation, rot_x, rotation_to_euler, spring_lengths, SegmentGeometry};
use crate::plant::{GapModel, PlantState};

pub const NUM_SPRINGS: usize = 12;
pub const NUM_IMU_CHANNELS: usize = 12;
pub const SENSOR_DIM: usize = NUM_SPRINGS + NUM_IMU_CHANNELS;

/// Spring-length envelope a read may fall in, including noise margin (mm).
pub const SPRING_ENVELOPE: (f64, f64) = (60.0, 260.0);

/// Calibration bounds used when recording spring data on the linear stage (mm).
pub const CALIBRATED_LENGTH: (f64, f64) = (70.0, 240.0);

const MONOTONE_CHECK_POINTS: usize = 1000;
const BISECTION_TOL: f64 = 1e-9;

/// Quartic map from measured inductance (uH) to spring length (mm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationCurve {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    /// Inductance interval (uH) the curve is trusted on.
    pub inductance_range: [f64; 2],
}

impl CalibrationCurve {
    /// Coefficients exactly as published for the physical springs.
    ///
    /// The polynomial peaks near 20.5 mm and never reaches the 70-240 mm
    /// working range for positive inductance, so it cannot drive the spring
    /// path; [`CalibrationCurve::default`] flips the sign of the quartic term.
    pub fn published() -> Self {
        Self {
            a: -12.89,
            b: 0.9553,
            c: -1.091e-2,
            d: 5.692e-5,
            e: -1.119e-7,
            inductance_range: [0.0, 160.0],
        }
    }

    pub fn identity(inductance_range: [f64; 2]) -> Self {
        Self {
            a: 0.0,
            b: 1.0,
            c: 0.0,
            d: 0.0,
            e: 0.0,
            inductance_range,
        }
    }

    pub fn coefficients(&self) -> [f64; 5] {
        [self.a, self.b, self.c, self.d, self.e]
    }

    pub fn from_coefficients(c: [f64; 5], inductance_range: [f64; 2]) -> Self {
        Self {
            a: c[0],
            b: c[1],
            c: c[2],
            d: c[3],
            e: c[4],
            inductance_range,
        }
    }

    pub fn eval(&self, i: f64) -> f64 {
        self.a + i * (self.b + i * (self.c + i * (self.d + i * self.e)))
    }

    pub fn slope(&self, i: f64) -> f64 {
        self.b + i * (2.0 * self.c + i * (3.0 * self.d + i * 4.0 * self.e))
    }

    /// Checks strict monotone increase over the trusted range.
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.inductance_range;
        if !(lo < hi) {
            return Err(Error::Config("calibration range must be increasing".into()));
        }
        let mut prev = self.eval(lo);
        for k in 1..=MONOTONE_CHECK_POINTS {
            let i = lo + (hi - lo) * k as f64 / MONOTONE_CHECK_POINTS as f64;
            let v = self.eval(i);
            if !(v > prev) {
                return Err(Error::Config(format!(
                    "calibration curve is not increasing near inductance {i:.3}"
                )));
            }
            prev = v;
        }
        Ok(())
    }

    /// Length image of the trusted range.
    pub fn length_range(&self) -> [f64; 2] {
        [self.eval(self.inductance_range[0]), self.eval(self.inductance_range[1])]
    }
}

impl Default for CalibrationCurve {
    fn default() -> Self {
        let mut c = Self::published();
        c.e = -c.e;
        // about 40-283 mm: the reachable spring lengths plus gap and noise
        c.inductance_range = [98.0, 185.0];
        c
    }
}

/// Calibrated spring length together with an extrapolation marker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibratedLength {
    pub length: f64,
    pub extrapolated: bool,
}

pub fn length_from_inductance(i: f64, curve: &CalibrationCurve) -> CalibratedLength {
    let [lo, hi] = curve.inductance_range;
    CalibratedLength {
        length: curve.eval(i),
        extrapolated: i < lo || i > hi,
    }
}

/// Inverts a monotone calibration curve by bisection.
pub fn inductance_from_length(length: f64, curve: &CalibrationCurve) -> Result<f64> {
    curve.validate()?;
    let [lo, hi] = curve.inductance_range;
    let [lmin, lmax] = curve.length_range();
    if !(lmin..=lmax).contains(&length) {
        return Err(Error::Domain {
            quantity: "spring length",
            value: length,
            min: lmin,
            max: lmax,
        });
    }
    Ok(invert_monotone(curve, length, lo, hi))
}

fn invert_monotone(curve: &CalibrationCurve, length: f64, mut lo: f64, mut hi: f64) -> f64 {
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if curve.eval(mid) < length {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Least-squares quartic with its residual RMS (mm).
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationFit {
    pub curve: CalibrationCurve,
    pub residual_rms: f64,
}

/// Fits `length = a + b I + c I^2 + d I^3 + e I^4` to `(inductance, length)` samples.
///
/// The fit runs on a centred, scaled inductance so the design matrix stays
/// well conditioned, then the polynomial is expanded back to raw powers.
pub fn fit_calibration(samples: &[(f64, f64)]) -> Result<CalibrationFit> {
    if samples.len() < 5 {
        return Err(Error::RankDeficient(format!(
            "{} samples, a quartic needs at least 5",
            samples.len()
        )));
    }
    let (imin, imax) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.0), hi.max(s.0)));
    let centre = 0.5 * (imin + imax);
    let scale = 0.5 * (imax - imin);
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::RankDeficient("all inductances coincide".into()));
    }
    let n = samples.len();
    let design = DMatrix::from_fn(n, 5, |r, c| ((samples[r].0 - centre) / scale).powi(c as i32));
    let rhs = DVector::from_iterator(n, samples.iter().map(|s| s.1));
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > smax * 1e-12) {
        return Err(Error::RankDeficient(format!(
            "singular values span {smax:e} to {smin:e}"
        )));
    }
    let scaled = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::Numerical(e.to_string()))?;

    // p(I) = sum_k s_k ((I - m)/h)^k ; expand each binomial into raw powers
    let mut raw = [0.0f64; 5];
    for (k, &sk) in scaled.iter().enumerate() {
        let coef = sk / scale.powi(k as i32);
        for j in 0..=k {
            raw[j] += coef * binomial(k, j) * (-centre).powi((k - j) as i32);
        }
    }
    let residual = &design * &scaled - &rhs;
    let residual_rms = (residual.norm_squared() / n as f64).sqrt();
    Ok(CalibrationFit {
        curve: CalibrationCurve::from_coefficients(raw, [imin, imax]),
        residual_rms,
    })
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Reads `inductance,length_mm` calibration samples.
pub fn read_calibration_csv<R: Read>(reader: R, source_name: &str) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(source_name, 1, e.to_string()))?
        .clone();
    if headers.len() != 2 || &headers[0] != "inductance" || &headers[1] != "length_mm" {
        return Err(Error::parse(
            source_name,
            1,
            format!("expected header `inductance,length_mm`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(source_name, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let field = |k: usize| -> Result<f64> {
            rec.get(k)
                .ok_or_else(|| Error::parse(source_name, line, "missing field"))?
                .parse::<f64>()
                .map_err(|e| Error::parse(source_name, line, format!("field {}: {e}", k + 1)))
        };
        out.push((field(0)?, field(1)?));
    }
    Ok(out)
}

pub fn load_calibration_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_calibration_csv(f, &path.display().to_string())
}

/// LC tank used to read coil inductance as a frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CircuitParams {
    /// Parallel capacitance (F).
    pub capacitance: f64,
    /// Series compensation inductance (H).
    pub l_comp: f64,
}

impl Default for CircuitParams {
    fn default() -> Self {
        Self {
            capacitance: 1e-9,
            l_comp: 10e-6,
        }
    }
}

impl CircuitParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.capacitance > 0.0 && self.l_comp >= 0.0) {
            return Err(Error::Config("circuit needs C > 0 and L_comp >= 0".into()));
        }
        Ok(())
    }
}

/// Spring inductance (H) from the oscillation frequency (Hz).
pub fn inductance_from_frequency(f: f64, circuit: &CircuitParams) -> Result<f64> {
    if !(f > 0.0) {
        return Err(Error::Domain {
            quantity: "frequency",
            value: f,
            min: 0.0,
            max: f64::INFINITY,
        });
    }
    let w = 2.0 * PI * f;
    let l = 1.0 / (circuit.capacitance * w * w) - circuit.l_comp;
    if !(l > 0.0) {
        return Err(Error::Domain {
            quantity: "spring inductance (below compensation floor)",
            value: l,
            min: 0.0,
            max: f64::INFINITY,
        });
    }
    Ok(l)
}

/// Oscillation frequency (Hz) the tank produces for a spring inductance (H).
pub fn frequency_from_inductance(l: f64, circuit: &CircuitParams) -> f64 {
    1.0 / (2.0 * PI * (circuit.capacitance * (l + circuit.l_comp)).sqrt())
}

/// The 24-value geometric signal.
///
/// Springs 0-5 span the upper segment, 6-11 the lower one. IMU channels are
/// (yaw, pitch, roll) in degrees for mid-pad A, mid-pad B, end-pad A, end-pad B.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorVector {
    pub spring: [f64; NUM_SPRINGS],
    pub imu: [f64; NUM_IMU_CHANNELS],
}

impl SensorVector {
    pub fn to_array(&self) -> [f64; SENSOR_DIM] {
        let mut out = [0.0; SENSOR_DIM];
        out[..NUM_SPRINGS].copy_from_slice(&self.spring);
        out[NUM_SPRINGS..].copy_from_slice(&self.imu);
        out
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != SENSOR_DIM {
            return Err(Error::Dimension {
                expected: SENSOR_DIM,
                actual: v.len(),
            });
        }
        let mut s = Self {
            spring: [0.0; NUM_SPRINGS],
            imu: [0.0; NUM_IMU_CHANNELS],
        };
        s.spring.copy_from_slice(&v[..NUM_SPRINGS]);
        s.imu.copy_from_slice(&v[NUM_SPRINGS..]);
        Ok(s)
    }

    pub fn in_envelope(&self) -> bool {
        self.spring
            .iter()
            .all(|&l| (SPRING_ENVELOPE.0..=SPRING_ENVELOPE.1).contains(&l))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorNoise {
    /// mm
    pub spring_sigma: f64,
    /// deg
    pub imu_sigma: f64,
    /// Spring read resolution (mm); zero disables quantisation.
    pub spring_quantization: f64,
}

impl Default for SensorNoise {
    fn default() -> Self {
        Self {
            spring_sigma: 0.2,
            imu_sigma: 0.3,
            spring_quantization: 0.4,
        }
    }
}

impl SensorNoise {
    /// Exact geometric reads.
    pub fn none() -> Self {
        Self {
            spring_sigma: 0.0,
            imu_sigma: 0.0,
            spring_quantization: 0.0,
        }
    }

    /// No random noise but the spring resolution kept.
    pub fn quantized_only() -> Self {
        Self {
            spring_sigma: 0.0,
            imu_sigma: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spring_sigma >= 0.0 && self.imu_sigma >= 0.0 && self.spring_quantization >= 0.0) {
            return Err(Error::Config("noise levels must be non-negative".into()));
        }
        Ok(())
    }
}

/// Everything that stays fixed about the sensor hardware.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorModel {
    pub curve: CalibrationCurve,
    pub circuit: CircuitParams,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            curve: CalibrationCurve::default(),
            circuit: CircuitParams::default(),
        }
    }
}

impl SensorModel {
    pub fn validate(&self) -> Result<()> {
        self.curve.validate()?;
        self.circuit.validate()
    }

    /// Geometric length through inductance, tank frequency and calibration.
    /// `gain` scales the recovered inductance, as a coil that drifted would.
    fn spring_signal_path(&self, length: f64, gain: f64) -> f64 {
        let curve = &self.curve;
        let [lo, hi] = curve.inductance_range;
        // outside the trusted range fall back to the nearest end; reads that
        // far out are flagged by the envelope check instead
        let clamped = length.clamp(curve.eval(lo), curve.eval(hi));
        let i_uh = invert_monotone(curve, clamped, lo, hi);
        let f = frequency_from_inductance(i_uh * 1e-6, &self.circuit);
        let w = 2.0 * PI * f;
        let measured_uh = (1.0 / (self.circuit.capacitance * w * w) - self.circuit.l_comp) * 1e6;
        curve.eval(measured_uh * gain) + (length - clamped)
    }
}

/// Fixed mount rotations of the two IMUs on a pad; they sit perpendicular.
pub fn imu_mounts() -> [Matrix3<f64>; 2] {
    [Matrix3::identity(), rot_x(PI / 2.0)]
}

fn quantize(x: f64, step: f64) -> f64 {
    if step > 0.0 {
        (x / step).round() * step
    } else {
        x
    }
}

/// Noise-free spring lengths of both segments for a plant state.
pub fn geometric_spring_lengths(state: &PlantState, geometry: &SegmentGeometry) -> [f64; NUM_SPRINGS] {
    let f = &state.frames;
    // springs are anchored on the pad mid-planes
    let a = spring_lengths(geometry, &f.base, &f.mid_pad);
    let b = spring_lengths(geometry, &f.mid_pad, &f.end_pad);
    let mut out = [0.0; NUM_SPRINGS];
    out[..6].copy_from_slice(&a);
    out[6..].copy_from_slice(&b);
    out
}

/// Samples the full sensor vector for a plant state.
pub fn read_sensors<R: Rng + ?Sized>(
    state: &PlantState,
    geometry: &SegmentGeometry,
    model: &SensorModel,
    noise: &SensorNoise,
    gap: Option<&GapModel>,
    rng: &mut R,
) -> SensorVector {
    let spring_noise = Normal::new(0.0, noise.spring_sigma).expect("sigma validated non-negative");
    let imu_noise = Normal::new(0.0, noise.imu_sigma).expect("sigma validated non-negative");

    let mut spring = [0.0; NUM_SPRINGS];
    for (k, (out, len)) in spring
        .iter_mut()
        .zip(geometric_spring_lengths(state, geometry))
        .enumerate()
    {
        let gain = gap.map_or(1.0, |g| g.spring_gain[k]);
        let mut v = model.spring_signal_path(len, gain);
        if let Some(g) = gap {
            v += g.spring_bias[k];
        }
        if noise.spring_sigma > 0.0 {
            v += spring_noise.sample(rng);
        }
        *out = quantize(v, noise.spring_quantization);
    }

    let mut imu = [0.0; NUM_IMU_CHANNELS];
    let pads = [state.frames.mid_pad.rotation, state.frames.end_pad.rotation];
    let mounts = imu_mounts();
    for (p, pad) in pads.iter().enumerate() {
        for (m, mount) in mounts.iter().enumerate() {
            let slot = 2 * p + m;
            let e = rotation_to_euler(&(pad * mount));
            let mut angles = [e.yaw.to_degrees(), e.pitch.to_degrees(), e.roll.to_degrees()];
            for (c, a) in angles.iter_mut().enumerate() {
                if let Some(g) = gap {
                    *a += g.imu_bias[3 * slot + c];
                }
                if noise.imu_sigma > 0.0 {
                    *a += imu_noise.sample(rng);
                }
            }
            let read = if m == 0 {
                // identity mount: the IMU frame is the pad frame
                angles
            } else {
                let r = euler_to_rotation(
                    angles[0].to_radians(),
                    angles[1].to_radians(),
                    angles[2].to_radians(),
                ) * mount.transpose();
                let pe = rotation_to_euler(&r);
                [pe.yaw.to_degrees(), pe.pitch.to_degrees(), pe.roll.to_degrees()]
            };
            imu[3 * slot..3 * slot + 3].copy_from_slice(&read);
        }
    }
    SensorVector { spring, imu }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{forward, ActuationVector, LoadSpec, Plant, PlantConfig};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_algebra_frequency() {
        let circuit = CircuitParams {
            capacitance: 2.0,
            l_comp: 0.25,
        };
        // C (2 pi f)^2 = 1
        let f = 1.0 / (2.0 * PI * 2f64.sqrt());
        assert_relative_eq!(inductance_from_frequency(f, &circuit).unwrap(), 0.75, epsilon = 1e-12);
    }

    #[test]
    fn frequency_round_trip() {
        let c = CircuitParams::default();
        for l in [50e-6, 150e-6, 3e-3] {
            let back = inductance_from_frequency(frequency_from_inductance(l, &c), &c).unwrap();
            assert!((back - l).abs() / l < 1e-12);
        }
    }

    #[test]
    fn direct_evaluation_of_tank_formula() {
        let c = CircuitParams {
            capacitance: 1e-9,
            l_comp: 0.0,
        };
        // 1 / (1e-9 * (2 pi 1e5)^2) = 1 / (1e-9 * 3.947841760435743e11)
        let expect = 1.0 / 394.784_176_043_574_3;
        assert_relative_eq!(inductance_from_frequency(1e5, &c).unwrap(), expect, max_relative = 1e-12);
    }

    #[test]
    fn frequency_below_floor_is_flagged() {
        let c = CircuitParams {
            capacitance: 1e-9,
            l_comp: 1e-3,
        };
        assert!(inductance_from_frequency(1e6, &c).is_err());
        assert!(inductance_from_frequency(0.0, &c).is_err());
    }

    #[test]
    fn published_curve_cannot_reach_spring_range() {
        let p = CalibrationCurve::published();
        let peak = (0..=4000).map(|k| p.eval(k as f64 * 0.1)).fold(f64::MIN, f64::max);
        assert!(peak < 21.0);
        let mut wide = p.clone();
        wide.inductance_range = [0.0, 300.0];
        assert!(matches!(inductance_from_length(150.0, &wide), Err(Error::Config(_))));
    }

    #[test]
    fn default_curve_endpoint_root() {
        let c = CalibrationCurve::default();
        c.validate().unwrap();
        // root of the default quartic minus 70, found independently by a
        // Newton iteration started from the midpoint of the range
        let mut i = 150.0;
        for _ in 0..50 {
            i -= (c.eval(i) - 70.0) / c.slope(i);
        }
        let l = length_from_inductance(i, &c);
        assert_relative_eq!(l.length, 70.0, epsilon = 1e-9);
        assert!(!l.extrapolated);
        assert_relative_eq!(i, 122.350_640_789_225, epsilon = 1e-6);
    }

    #[test]
    fn identity_curve_maps_through() {
        let c = CalibrationCurve::identity([0.0, 500.0]);
        assert_eq!(length_from_inductance(123.5, &c).length, 123.5);
        assert!((inductance_from_length(123.5, &c).unwrap() - 123.5).abs() < 1e-8);
        assert!(length_from_inductance(600.0, &c).extrapolated);
    }

    #[test]
    fn default_curve_increases_across_range() {
        let c = CalibrationCurve::default();
        let [lo, hi] = c.inductance_range;
        assert!(c.eval(lo) < c.eval(0.5 * (lo + hi)));
        assert!(c.eval(0.5 * (lo + hi)) < c.eval(hi));
        assert!(c.eval(lo) < 70.0 && c.eval(hi) > 240.0);
    }

    #[test]
    fn bisection_inverse_at_150() {
        let c = CalibrationCurve::default();
        let i = inductance_from_length(150.0, &c).unwrap();
        // independent bracket search on a fine grid
        let grid = (0..=87_000).map(|k| 98.0 + k as f64 * 1e-3);
        let best = grid
            .min_by(|a, b| (c.eval(*a) - 150.0).abs().total_cmp(&(c.eval(*b) - 150.0).abs()))
            .unwrap();
        assert!((i - best).abs() < 1e-3);
        assert_relative_eq!(i, 155.113_425_712_7, epsilon = 1e-6);
    }

    #[test]
    fn fit_recovers_exact_quartic() {
        let truth = CalibrationCurve::default();
        let samples: Vec<(f64, f64)> = (0..60)
            .map(|k| {
                let i = 120.0 + k as f64;
                (i, truth.eval(i))
            })
            .collect();
        let fit = fit_calibration(&samples).unwrap();
        for (a, b) in fit.curve.coefficients().iter().zip(truth.coefficients()) {
            assert!(((a - b) / b).abs() < 1e-6, "{a} vs {b}");
        }
        assert!(fit.residual_rms < 1e-9);
    }

    #[test]
    fn fit_with_noise_stays_within_resolution() {
        let truth = CalibrationCurve::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 0.2).unwrap();
        let samples: Vec<(f64, f64)> = (0..500)
            .map(|k| {
                let i = 122.0 + 55.0 * k as f64 / 499.0;
                (i, truth.eval(i) + noise.sample(&mut rng))
            })
            .collect();
        let fit = fit_calibration(&samples).unwrap();
        assert!(fit.residual_rms <= 0.4, "rms {}", fit.residual_rms);
        // residual of pure noise should sit near its sigma
        assert!((fit.residual_rms - 0.2).abs() < 0.03);
    }

    #[test]
    fn fit_needs_five_samples() {
        let s = [(1.0, 1.0), (2.0, 2.0), (3.0, 3.0), (4.0, 4.0)];
        assert!(matches!(fit_calibration(&s), Err(Error::RankDeficient(_))));
        let same = [(1.0, 1.0); 6];
        assert!(fit_calibration(&same).is_err());
    }

    #[test]
    fn calibration_csv_parsing() {
        let ok = "inductance,length_mm\n120.0,66.0\n130,100.5\n";
        assert_eq!(read_calibration_csv(ok.as_bytes(), "t").unwrap(), vec![(120.0, 66.0), (130.0, 100.5)]);
        let bad_header = "i,l\n1,2\n";
        assert!(matches!(read_calibration_csv(bad_header.as_bytes(), "t"), Err(Error::Parse { line: 1, .. })));
        let bad_row = "inductance,length_mm\n1,2\n3,x\n";
        match read_calibration_csv(bad_row.as_bytes(), "t") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    fn straight_state() -> PlantState {
        forward(&PlantConfig::default(), &ActuationVector::zeros(), &LoadSpec::default())
            .unwrap()
            .0
    }

    #[test]
    fn noiseless_straight_reads() {
        let state = straight_state();
        let g = SegmentGeometry::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = read_sensors(&state, &g, &SensorModel::default(), &SensorNoise::none(), None, &mut rng);
        for a in s.imu {
            assert!(a.abs() < 1e-9, "{a}");
        }
        let geo = geometric_spring_lengths(&state, &g);
        for (a, b) in s.spring.iter().zip(&geo) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn reads_are_seed_deterministic() {
        let state = forward(
            &PlantConfig::default(),
            &ActuationVector([10.0, -20.0, 5.0, 30.0, 0.0, -12.0]),
            &LoadSpec::default(),
        )
        .unwrap()
        .0;
        let g = SegmentGeometry::default();
        let gap = GapModel::from_seed(4);
        let read = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            read_sensors(&state, &g, &SensorModel::default(), &SensorNoise::default(), Some(&gap), &mut rng)
        };
        assert_eq!(read(11).to_array(), read(11).to_array());
        assert_ne!(read(11).to_array(), read(12).to_array());
    }

    #[test]
    fn quantized_reads_are_resolution_multiples() {
        let state = straight_state();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = read_sensors(
            &state,
            &SegmentGeometry::default(),
            &SensorModel::default(),
            &SensorNoise::quantized_only(),
            None,
            &mut rng,
        );
        for v in s.spring {
            assert_eq!(v, (v / 0.4).round() * 0.4);
        }
    }

    /// Standard deviation of round(x/step)*step for x ~ N(mu, sigma), by
    /// summing the Gaussian mass of every quantisation cell.
    fn quantized_gaussian_sd(mu: f64, sigma: f64, step: f64) -> f64 {
        let cdf = |x: f64| 0.5 * (1.0 + erf((x - mu) / (sigma * 2f64.sqrt())));
        let centre = (mu / step).round() as i64;
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for k in centre - 40..=centre + 40 {
            let v = k as f64 * step;
            let p = cdf(v + step / 2.0) - cdf(v - step / 2.0);
            m1 += p * v;
            m2 += p * v * v;
        }
        (m2 - m1 * m1).sqrt()
    }

    /// Abramowitz-Stegun 7.1.26 is too coarse here; integrate the density.
    fn erf(x: f64) -> f64 {
        let n = 4000;
        let h = x / n as f64;
        let f = |t: f64| (-t * t).exp();
        let mut s = f(0.0) + f(x);
        for k in 1..n {
            s += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0 * 2.0 / PI.sqrt()
    }

    #[test]
    fn spring_noise_statistics() {
        let state = straight_state();
        let g = SegmentGeometry::default();
        let model = SensorModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 10_000;
        let reads: Vec<f64> = (0..n)
            .map(|_| read_sensors(&state, &g, &model, &SensorNoise::default(), None, &mut rng).spring[0])
            .collect();
        let mean = reads.iter().sum::<f64>() / n as f64;
        let sd = (reads.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let clean = model.spring_signal_path(geometric_spring_lengths(&state, &g)[0], 1.0);
        let expect = quantized_gaussian_sd(clean, 0.2, 0.4).max(0.2);
        assert!((sd - expect).abs() / expect < 0.15, "sd {sd} expect {expect}");
    }

    #[test]
    fn signal_path_round_trips_across_range() {
        let model = SensorModel::default();
        for k in 0..=170 {
            let l = 70.0 + k as f64;
            assert!((model.spring_signal_path(l, 1.0) - l).abs() < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn sensor_map_ignores_load_and_pressure(
            q in proptest::array::uniform6(-40.0f64..40.0),
            payload in 0.0f64..500.0,
        ) {
            // identical frames give identical reads regardless of how they were reached
            let cfg = PlantConfig::default();
            let (state, _) = forward(&cfg, &ActuationVector(q), &LoadSpec::with_payload(payload)).unwrap();
            let mut other = state.clone();
            other.load = LoadSpec::with_payload(0.0);
            other.pressures = ActuationVector::zeros();
            let read = |s: &PlantState| {
                let mut rng = ChaCha8Rng::seed_from_u64(5);
                read_sensors(s, &cfg.geometry, &SensorModel::default(), &SensorNoise::none(), None, &mut rng).to_array()
            };
            prop_assert_eq!(read(&state), read(&other));
        }

        #[test]
        fn inversion_contract(l in 70.0f64..240.0) {
            let c = CalibrationCurve::default();
            let i = inductance_from_length(l, &c).unwrap();
            prop_assert!((length_from_inductance(i, &c).length - l).abs() < 1e-6);
        }
    }

    #[test]
    fn plant_reads_stay_in_envelope() {
        let mut plant = Plant::new(PlantConfig::default(), LoadSpec::with_payload(500.0), None).unwrap();
        let g = SegmentGeometry::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for q in [
            ActuationVector([40.0, -40.0, -40.0, 40.0, -40.0, -40.0]),
            ActuationVector([-40.0, -40.0, -40.0, -40.0, -40.0, -40.0]),
            ActuationVector::splat(40.0),
        ] {
            plant.set_pressures(&q).unwrap();
            let s = read_sensors(plant.state(), &g, &SensorModel::default(), &SensorNoise::default(), None, &mut rng);
            assert!(s.in_envelope(), "{:?}", s.spring);
        }
    }
}
