//! Complexified classical dynamics `ẍ = −M x`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::chain::{build_coupling_matrix, ChainSpec, CouplingMatrix};
use crate::error::{Error, Result};
use crate::modes::{decoupling_transform, mode_set, Decoupling, ModePair};
use crate::phase::{classify_phase, Phase, DEFAULT_PHASE_TOL};

/// `|H − H₀| / (1 + |H₀|)` bound for bounded motion.
pub const BOUNDED_ENERGY_CONTRACT: f64 = 1e-8;
/// `|H − H₀|` over the running maximum energy scale, for growing motion.
pub const GROWING_ENERGY_CONTRACT: f64 = 1e-6;
/// A run aborts once the drift exceeds ten times the growing contract.
pub const ABORT_DRIFT: f64 = 10.0 * GROWING_ENERGY_CONTRACT;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalState {
    pub t: f64,
    pub x: Vec<Complex64>,
    pub v: Vec<Complex64>,
}

impl ClassicalState {
    pub fn new(t: f64, x: Vec<Complex64>, v: Vec<Complex64>) -> Result<Self> {
        if x.len() != v.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: v.len(),
            });
        }
        Ok(ClassicalState { t, x, v })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    fn check(&self, spec: &ChainSpec) -> Result<()> {
        for len in [self.x.len(), self.v.len()] {
            if len != spec.n() {
                return Err(Error::DimensionMismatch {
                    expected: spec.n(),
                    got: len,
                });
            }
        }
        Ok(())
    }
}

/// `a = −M x`.
pub fn equations_of_motion(spec: &ChainSpec, state: &ClassicalState) -> Result<Vec<Complex64>> {
    state.check(spec)?;
    let m = build_coupling_matrix(spec);
    Ok(m.apply(&state.x).into_iter().map(|a| -a).collect())
}

/// `H = ½ Σ v_j² + ½ xᵀ M x` (no complex conjugation).
pub fn complex_energy(m: &CouplingMatrix, state: &ClassicalState) -> Complex64 {
    let kinetic: Complex64 = state.v.iter().map(|v| v * v).sum();
    0.5 * (kinetic + m.quadratic_form(&state.x))
}

// ½(Σ|v|² + Σ|M_jk||x_j||x_k|): the size the terms of H cancel down from.
fn energy_scale(m: &CouplingMatrix, state: &ClassicalState) -> f64 {
    let n = state.n();
    let mut s: f64 = state.v.iter().map(|v| v.norm_sqr()).sum();
    for j in 0..n {
        s += m.diagonal()[j] * state.x[j].norm_sqr();
        if j + 1 < n {
            s += 2.0 * m.off_diagonal().norm() * state.x[j].norm() * state.x[j + 1].norm();
        }
    }
    0.5 * s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub spec: ChainSpec,
    pub init: ClassicalState,
    /// Integrator step actually used (divides `dt_out`).
    pub dt: f64,
    pub dt_out: f64,
    pub states: Vec<ClassicalState>,
    pub energy: Vec<Complex64>,
}

impl TrajectoryRecord {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    /// Worst `|H − H₀| / (1 + |H₀|)`.
    pub fn bounded_drift(&self) -> f64 {
        let h0 = self.energy[0];
        self.energy
            .iter()
            .map(|h| (h - h0).norm() / (1.0 + h0.norm()))
            .fold(0.0, f64::max)
    }

    /// Worst `|H − H₀|` over the running maximum of the energy scale.
    pub fn growing_drift(&self) -> f64 {
        let m = build_coupling_matrix(&self.spec);
        let h0 = self.energy[0];
        let mut running: f64 = 0.0;
        let mut worst: f64 = 0.0;
        for (s, h) in self.states.iter().zip(&self.energy) {
            running = running.max(energy_scale(&m, s));
            if running > 0.0 {
                worst = worst.max((h - h0).norm() / running);
            }
        }
        worst
    }

    pub fn max_abs_x(&self) -> Vec<f64> {
        self.states
            .iter()
            .map(|s| s.x.iter().map(|x| x.norm()).fold(0.0, f64::max))
            .collect()
    }
}

/// Fixed-step RK4 on `(x, v)`.
///
/// The step is shrunk so that an integer number of steps fits each output
/// interval. Aborts with `StepTooLarge` once the energy drift exceeds
/// `ABORT_DRIFT`, measured against the larger of `1 + |H₀|` and the running
/// energy scale.
pub fn integrate(
    spec: &ChainSpec,
    init: &ClassicalState,
    dt: f64,
    t_end: f64,
    dt_out: f64,
) -> Result<TrajectoryRecord> {
    init.check(spec)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidSpec(format!("dt must be positive (got {dt})")));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidSpec(format!("t_end must be positive (got {t_end})")));
    }
    if !(dt_out >= dt && dt_out.is_finite()) {
        return Err(Error::InvalidSpec(format!(
            "dt_out must be at least dt (got {dt_out} < {dt})"
        )));
    }
    let sub = (dt_out / dt - 1e-9).ceil().max(1.0) as usize;
    let h = dt_out / sub as f64;
    let samples = (t_end / dt_out + 1e-9).floor() as usize;

    let m = build_coupling_matrix(spec);
    let n = spec.n();
    let mut x = init.x.clone();
    let mut v = init.v.clone();
    let mut states = Vec::with_capacity(samples + 1);
    let mut energy = Vec::with_capacity(samples + 1);
    let first = ClassicalState::new(init.t, x.clone(), v.clone())?;
    let h0 = complex_energy(&m, &first);
    let mut scale = (1.0 + h0.norm()).max(energy_scale(&m, &first));
    energy.push(h0);
    states.push(first);

    let accel = |x: &[Complex64], out: &mut Vec<Complex64>| {
        *out = m.apply(x);
        out.iter_mut().for_each(|a| *a = -*a);
    };
    let mut a1 = vec![Complex64::default(); n];
    let mut a2 = a1.clone();
    let mut a3 = a1.clone();
    let mut a4 = a1.clone();
    let mut tmp = a1.clone();

    for k in 1..=samples {
        for _ in 0..sub {
            // k1 = (v, a(x)), k2 = (v + h/2 a1, a(x + h/2 v)), ...
            accel(&x, &mut a1);
            for j in 0..n {
                tmp[j] = x[j] + 0.5 * h * v[j];
            }
            accel(&tmp, &mut a2);
            for j in 0..n {
                tmp[j] = x[j] + 0.5 * h * (v[j] + 0.5 * h * a1[j]);
            }
            accel(&tmp, &mut a3);
            for j in 0..n {
                tmp[j] = x[j] + h * (v[j] + 0.5 * h * a2[j]);
            }
            accel(&tmp, &mut a4);
            for j in 0..n {
                let v2 = v[j] + 0.5 * h * a1[j];
                let v3 = v[j] + 0.5 * h * a2[j];
                let v4 = v[j] + h * a3[j];
                x[j] += h / 6.0 * (v[j] + 2.0 * v2 + 2.0 * v3 + v4);
                v[j] += h / 6.0 * (a1[j] + 2.0 * a2[j] + 2.0 * a3[j] + a4[j]);
            }
        }
        let t = init.t + k as f64 * dt_out;
        let state = ClassicalState { t, x: x.clone(), v: v.clone() };
        let e = complex_energy(&m, &state);
        scale = scale.max(energy_scale(&m, &state));
        let drift = (e - h0).norm() / scale;
        if !(drift <= ABORT_DRIFT) {
            return Err(Error::StepTooLarge { t, drift });
        }
        energy.push(e);
        states.push(state);
    }

    Ok(TrajectoryRecord {
        spec: spec.clone(),
        init: init.clone(),
        dt: h,
        dt_out,
        states,
        energy,
    })
}

/// `q_j(t) = c⁺_j e^{iν_j t} + c⁻_j e^{−iν_j t}` with `q = Vᵀx`.
#[derive(Debug, Clone)]
pub struct ModeAmplitudes {
    pub plus: Vec<Complex64>,
    pub minus: Vec<Complex64>,
    pub t0: f64,
    decoupling: Decoupling,
}

impl ModeAmplitudes {
    pub fn nu(&self) -> &[Complex64] {
        self.decoupling.modes.nu()
    }

    pub fn decoupling(&self) -> &Decoupling {
        &self.decoupling
    }

    /// Exact state at time `t`.
    pub fn state_at(&self, t: f64) -> ClassicalState {
        let tau = t - self.t0;
        let i = Complex64::i();
        let mut q = Vec::with_capacity(self.plus.len());
        let mut qd = Vec::with_capacity(self.plus.len());
        for ((&cp, &cm), &nu) in self.plus.iter().zip(&self.minus).zip(self.nu()) {
            let ep = (i * nu * tau).exp();
            let em = (-i * nu * tau).exp();
            q.push(cp * ep + cm * em);
            qd.push(i * nu * (cp * ep - cm * em));
        }
        ClassicalState {
            t,
            x: self.decoupling.from_modes(&q),
            v: self.decoupling.from_modes(&qd),
        }
    }

    /// `Σ_j |c⁺_j| + |c⁻_j|`.
    pub fn total(&self) -> f64 {
        self.plus.iter().chain(&self.minus).map(|c| c.norm()).sum()
    }
}

/// `c±_j = ½(q_j(0) ∓ i q̇_j(0)/ν_j)`.
pub fn mode_decompose(spec: &ChainSpec, init: &ClassicalState) -> Result<ModeAmplitudes> {
    init.check(spec)?;
    let decoupling = decoupling_transform(spec)?;
    let q = decoupling.to_modes(&init.x);
    let qd = decoupling.to_modes(&init.v);
    let i = Complex64::i();
    let nu = decoupling.modes.nu();
    let plus = (0..q.len()).map(|j| 0.5 * (q[j] - i * qd[j] / nu[j])).collect();
    let minus = (0..q.len()).map(|j| 0.5 * (q[j] + i * qd[j] / nu[j])).collect();
    Ok(ModeAmplitudes {
        plus,
        minus,
        t0: init.t,
        decoupling,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class")]
pub enum TrajectoryClass {
    Bounded,
    Growing {
        rate: f64,
        interval: Option<(f64, f64)>,
    },
    Decaying {
        rate: f64,
        interval: Option<(f64, f64)>,
    },
    Secular,
}

impl TrajectoryClass {
    pub fn name(&self) -> &'static str {
        match self {
            TrajectoryClass::Bounded => "Bounded",
            TrajectoryClass::Growing { .. } => "Growing",
            TrajectoryClass::Decaying { .. } => "Decaying",
            TrajectoryClass::Secular => "Secular",
        }
    }
}

/// Relative size below which a mode amplitude counts as not excited.
pub const EXCITATION_TOL: f64 = 1e-12;

/// Classification from mode amplitudes. A branch `c⁺ e^{iνt}` grows when
/// `Im ν < 0`, the branch `c⁻ e^{−iνt}` when `Im ν > 0`.
pub fn classify_amplitudes(amp: &ModeAmplitudes) -> TrajectoryClass {
    let total = amp.total();
    let floor = EXCITATION_TOL * total.max(f64::MIN_POSITIVE);
    let modes = &amp.decoupling.modes;
    let mut real = vec![false; modes.len()];
    for p in modes.pairing() {
        if let ModePair::RealSingleton(j) = *p {
            real[j] = true;
        }
    }
    let mut grow: f64 = 0.0;
    let mut decay = f64::INFINITY;
    let mut real_excited = false;
    for (j, nu) in modes.nu().iter().enumerate() {
        let (cp, cm) = (amp.plus[j].norm() > floor, amp.minus[j].norm() > floor);
        if !(cp || cm) {
            continue;
        }
        if real[j] {
            real_excited = true;
            continue;
        }
        let (growing, decaying) = if nu.im < 0.0 { (cp, cm) } else { (cm, cp) };
        if growing {
            grow = grow.max(nu.im.abs());
        }
        if decaying {
            decay = decay.min(nu.im.abs());
        }
    }
    if grow > 0.0 {
        TrajectoryClass::Growing {
            rate: grow,
            interval: None,
        }
    } else if decay.is_finite() && !real_excited {
        TrajectoryClass::Decaying {
            rate: decay,
            interval: None,
        }
    } else {
        TrajectoryClass::Bounded
    }
}

/// Classification of the motion from `init`: Secular at an exceptional
/// point, otherwise from the mode amplitudes.
pub fn classify_trajectory(spec: &ChainSpec, init: &ClassicalState) -> Result<TrajectoryClass> {
    if classify_phase(spec, DEFAULT_PHASE_TOL)?.phase == Phase::Exceptional {
        return Ok(TrajectoryClass::Secular);
    }
    match mode_decompose(spec, init) {
        Ok(amp) => Ok(classify_amplitudes(&amp)),
        Err(Error::DegenerateModes(_)) => Ok(TrajectoryClass::Secular),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthFit {
    pub rate: f64,
    /// 95% confidence interval of the rate.
    pub lo: f64,
    pub hi: f64,
    pub windows: usize,
}

/// Slowest oscillation period `2π / min Re ν`.
pub fn slowest_period(spec: &ChainSpec) -> Result<f64> {
    let modes = mode_set(spec)?;
    let slow = modes.nu().iter().map(|v| v.re).fold(f64::INFINITY, f64::min);
    Ok(2.0 * PI / slow)
}

/// Least-squares slope of `log max|x|` over consecutive windows one slowest
/// period long, restricted to `t_from ≤ t ≤ t_to`.
pub fn fit_growth_rate(record: &TrajectoryRecord, t_from: f64, t_to: f64) -> Result<GrowthFit> {
    let period = slowest_period(&record.spec)?;
    let t_last = record.states.last().map(|s| s.t).unwrap_or(0.0);
    let t_to = t_to.min(t_last);
    if t_to - t_from < 10.0 * period {
        return Err(Error::InsufficientData(format!(
            "fit span {:.3} is shorter than ten slowest periods ({:.3})",
            t_to - t_from,
            10.0 * period
        )));
    }
    let windows = ((t_to - t_from) / period).floor() as usize;
    let width = (t_to - t_from) / windows as f64;
    let mut ts = Vec::with_capacity(windows);
    let mut ys = Vec::with_capacity(windows);
    let mags = record.max_abs_x();
    for w in 0..windows {
        let a = t_from + w as f64 * width;
        let b = a + width;
        let peak = record
            .states
            .iter()
            .zip(&mags)
            .filter(|(s, _)| s.t >= a && s.t <= b)
            .map(|(_, &m)| m)
            .fold(0.0, f64::max);
        if peak > 0.0 {
            ts.push(0.5 * (a + b));
            ys.push(peak.ln());
        }
    }
    let k = ts.len();
    if k < 3 {
        return Err(Error::InsufficientData("fewer than three populated windows".into()));
    }
    let kf = k as f64;
    let tm = ts.iter().sum::<f64>() / kf;
    let ym = ys.iter().sum::<f64>() / kf;
    let sxx: f64 = ts.iter().map(|t| (t - tm).powi(2)).sum();
    let sxy: f64 = ts.iter().zip(&ys).map(|(t, y)| (t - tm) * (y - ym)).sum();
    let slope = sxy / sxx;
    let rss: f64 = ts
        .iter()
        .zip(&ys)
        .map(|(t, y)| (y - ym - slope * (t - tm)).powi(2))
        .sum();
    let se = (rss / (kf - 2.0) / sxx).sqrt();
    let tq = StudentsT::new(0.0, 1.0, kf - 2.0)
        .map_err(|e| Error::InsufficientData(e.to_string()))?
        .inverse_cdf(0.975);
    Ok(GrowthFit {
        rate: slope,
        lo: slope - tq * se,
        hi: slope + tq * se,
        windows: k,
    })
}

/// Classification from a record alone. A rate whose confidence interval
/// excludes zero and exceeds `min_rate` in size counts as growth or decay.
pub fn classify_record(record: &TrajectoryRecord, min_rate: f64) -> Result<TrajectoryClass> {
    let t0 = record.states.first().map(|s| s.t).unwrap_or(0.0);
    let fit = fit_growth_rate(record, t0, f64::INFINITY)?;
    let interval = Some((fit.lo, fit.hi));
    Ok(if fit.lo > 0.0 && fit.rate > min_rate {
        TrajectoryClass::Growing {
            rate: fit.rate,
            interval,
        }
    } else if fit.hi < 0.0 && fit.rate < -min_rate {
        TrajectoryClass::Decaying {
            rate: -fit.rate,
            interval,
        }
    } else {
        TrajectoryClass::Bounded
    })
}
