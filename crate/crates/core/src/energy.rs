//! Affine power-versus-duty model calibrated from measured rows, battery
//! life prediction and integration of runtime event logs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{TARGET_RATE_HZ, WINDOW_HOP};
use crate::runtime::{window_activity, RuntimeEvent};

/// Stream time each window accounts for.
pub const WINDOW_SPAN_S: f64 = WINDOW_HOP as f64 / TARGET_RATE_HZ;

/// Measured smartphone rows: (fraction of time the FM is active, watts).
pub const REFERENCE_ROWS: [PowerRow; 9] = [
    PowerRow { trigger_rate: 0.1, power_w: 1.5 },
    PowerRow { trigger_rate: 0.2, power_w: 1.7 },
    PowerRow { trigger_rate: 0.3, power_w: 1.8 },
    PowerRow { trigger_rate: 0.4, power_w: 2.1 },
    PowerRow { trigger_rate: 0.5, power_w: 2.3 },
    PowerRow { trigger_rate: 0.6, power_w: 2.4 },
    PowerRow { trigger_rate: 0.7, power_w: 2.7 },
    PowerRow { trigger_rate: 0.8, power_w: 2.9 },
    PowerRow { trigger_rate: 0.9, power_w: 2.9 },
];
/// Reported battery life at each reference row, hours.
pub const REFERENCE_LIFE_H: [f64; 9] = [11.5, 10.2, 9.6, 8.2, 7.5, 7.2, 6.4, 6.0, 6.0];
pub const REFERENCE_IDLE_W: f64 = 0.7242;
pub const REFERENCE_IDLE_LIFE_H: f64 = 24.7;
pub const REFERENCE_CONTINUOUS_W: f64 = 2.6;
pub const REFERENCE_CONTINUOUS_LIFE_H: f64 = 6.7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerRow {
    pub trigger_rate: f64,
    pub power_w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerProfile {
    pub p_idle_w: f64,
    pub p_base_w: f64,
    pub p_fm_slope_w: f64,
    pub p_fm_continuous_w: f64,
    pub battery_wh: f64,
}

impl PowerProfile {
    pub fn validate(&self) -> Result<()> {
        let all = [self.p_idle_w, self.p_base_w, self.p_fm_slope_w, self.p_fm_continuous_w, self.battery_wh];
        if all.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Fit(format!("power profile values must be positive: {self:?}")));
        }
        if self.p_base_w <= self.p_idle_w {
            return Err(Error::Fit(format!(
                "base power {} W must exceed idle power {} W",
                self.p_base_w, self.p_idle_w
            )));
        }
        Ok(())
    }
}

/// Operating point for prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DutyMode {
    Idle,
    /// Fraction of time the FM runs behind the trigger.
    Triggered(f64),
    Continuous,
}

/// Least-squares line through the rows; battery calibrated as
/// `continuous_w × reference_life_h`.
pub fn fit_power_model(rows: &[PowerRow], idle_w: f64, continuous_w: f64, reference_life_h: f64) -> Result<PowerProfile> {
    if rows.len() < 2 {
        return Err(Error::Fit(format!("need at least 2 rows, got {}", rows.len())));
    }
    let n = rows.len() as f64;
    let mr = rows.iter().map(|r| r.trigger_rate).sum::<f64>() / n;
    let mp = rows.iter().map(|r| r.power_w).sum::<f64>() / n;
    let sxx: f64 = rows.iter().map(|r| (r.trigger_rate - mr).powi(2)).sum();
    if sxx <= f64::EPSILON * n {
        return Err(Error::Fit("all rows share one trigger rate".into()));
    }
    let sxy: f64 = rows.iter().map(|r| (r.trigger_rate - mr) * (r.power_w - mp)).sum();
    let slope = sxy / sxx;
    let profile = PowerProfile {
        p_idle_w: idle_w,
        p_base_w: mp - slope * mr,
        p_fm_slope_w: slope,
        p_fm_continuous_w: continuous_w,
        battery_wh: continuous_w * reference_life_h,
    };
    profile.validate()?;
    Ok(profile)
}

/// The profile fitted to the reference rows.
pub fn reference_profile() -> Result<PowerProfile> {
    fit_power_model(&REFERENCE_ROWS, REFERENCE_IDLE_W, REFERENCE_CONTINUOUS_W, REFERENCE_CONTINUOUS_LIFE_H)
}

pub fn predict_power(profile: &PowerProfile, mode: DutyMode) -> Result<f64> {
    match mode {
        DutyMode::Idle => Ok(profile.p_idle_w),
        DutyMode::Continuous => Ok(profile.p_fm_continuous_w),
        DutyMode::Triggered(d) if (0.0..=1.0).contains(&d) => Ok(profile.p_base_w + profile.p_fm_slope_w * d),
        DutyMode::Triggered(d) => Err(Error::Range(format!("duty {d} not in [0, 1]"))),
    }
}

pub fn battery_life(profile: &PowerProfile, mode: DutyMode) -> Result<f64> {
    Ok(profile.battery_wh / predict_power(profile, mode)?)
}

/// Relative battery-life gain of a triggered duty over continuous FM.
pub fn life_extension(profile: &PowerProfile, duty: f64) -> Result<f64> {
    Ok(battery_life(profile, DutyMode::Triggered(duty))? / battery_life(profile, DutyMode::Continuous)? - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyPoint {
    pub time_s: f64,
    pub joules: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyReport {
    pub windows: usize,
    pub active_windows: usize,
    pub duty: f64,
    pub duration_s: f64,
    pub total_j: f64,
    pub continuous_j: f64,
    /// `1 − total / continuous`.
    pub savings: f64,
    pub mean_power_w: f64,
    pub battery_life_h: f64,
    pub curve: Vec<EnergyPoint>,
}

/// Integrates state power over the log. Each window accounts for one hop of
/// stream time at `p_base`, plus the FM slope when the FM ran on it.
pub fn energy_report(events: &[RuntimeEvent], profile: &PowerProfile) -> Result<EnergyReport> {
    if events.is_empty() {
        return Err(Error::Config("energy report needs a non-empty event log".into()));
    }
    let windows = window_activity(events);
    if windows.is_empty() {
        return Err(Error::Config("event log contains no windows".into()));
    }
    let mut curve = Vec::with_capacity(windows.len() + 1);
    curve.push(EnergyPoint { time_s: 0.0, joules: 0.0 });
    let (mut joules, mut active) = (0.0, 0usize);
    for (k, &(_, fm)) in windows.iter().enumerate() {
        let p = profile.p_base_w + if fm { profile.p_fm_slope_w } else { 0.0 };
        active += usize::from(fm);
        joules += p * WINDOW_SPAN_S;
        curve.push(EnergyPoint {
            time_s: (k + 1) as f64 * WINDOW_SPAN_S,
            joules,
        });
    }
    let duration_s = windows.len() as f64 * WINDOW_SPAN_S;
    let continuous_j = profile.p_fm_continuous_w * duration_s;
    let mean_power_w = joules / duration_s;
    Ok(EnergyReport {
        windows: windows.len(),
        active_windows: active,
        duty: active as f64 / windows.len() as f64,
        duration_s,
        total_j: joules,
        continuous_j,
        savings: 1.0 - joules / continuous_j,
        mean_power_w,
        battery_life_h: profile.battery_wh / mean_power_w,
        curve,
    })
}

impl EnergyReport {
    pub fn curve_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for p in &self.curve {
            w.serialize(p).map_err(|e| Error::Config(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Rows of `(state, power W, battery life h)` in the measured table's layout.
pub fn battery_table(profile: &PowerProfile, duties: &[f64]) -> Result<Vec<(String, f64, f64)>> {
    let mut rows = vec![
        ("Idle".to_string(), DutyMode::Idle),
        ("Continuous FM".to_string(), DutyMode::Continuous),
    ];
    rows.extend(duties.iter().map(|&d| (format!("Triggered FM ({:.0}% triggered)", d * 100.0), DutyMode::Triggered(d))));
    rows.into_iter()
        .map(|(name, m)| Ok((name, predict_power(profile, m)?, battery_life(profile, m)?)))
        .collect()
}

pub fn format_battery_table(rows: &[(String, f64, f64)]) -> String {
    let mut s = format!("{:<32} {:>9} {:>15}\n", "State", "Power (W)", "Battery Life (h)");
    for (name, p, h) in rows {
        s.push_str(&format!("{name:<32} {p:>9.3} {h:>15.2}\n"));
    }
    s
}
