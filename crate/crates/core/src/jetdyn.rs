//! Jet thrust dynamics `T[k] = T[k-1] + g(T[k-1], u) dt` in two flavours:
//! an ideal rate command and an identified nonlinear first-order lag, plus
//! the least-squares identification of the lag model from throttle logs.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JetError {
    #[error("throttle profile does not excite the model (rank deficient regression); widen the throttle range and vary it over time")]
    RankDeficient,
    #[error("not enough data: {0}")]
    InsufficientData(String),
    #[error("invalid throttle log: {0}")]
    InvalidLog(String),
    #[error("invalid jet parameters: {0}")]
    InvalidParams(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JetParams {
    /// Steady-state thrust polynomial in throttle, lowest order first (N).
    pub steady_state: Vec<f64>,
    /// Time constant `a + b u` (s).
    pub time_constant: [f64; 2],
    pub min_throttle: f64,
    pub max_thrust: f64,
    /// Spool slew limit on |dT/dt| (N/s), shared with the ideal mode limit.
    pub max_slew: f64,
}

impl JetParams {
    pub fn steady_thrust(&self, u: f64) -> f64 {
        self.steady_state.iter().rev().fold(0.0, |acc, c| acc * u + c)
    }

    pub fn tau(&self, u: f64) -> f64 {
        self.time_constant[0] + self.time_constant[1] * u
    }

    pub fn clamp_throttle(&self, u: f64) -> f64 {
        u.clamp(self.min_throttle, 1.0)
    }

    pub fn validate(&self) -> Result<(), JetError> {
        let bad = |m: String| Err(JetError::InvalidParams(m));
        if self.steady_state.is_empty() {
            return bad("empty steady-state polynomial".into());
        }
        if !(self.max_thrust > 0.0) || !(self.max_slew > 0.0) {
            return bad("max_thrust and max_slew must be > 0".into());
        }
        if !(0.0..1.0).contains(&self.min_throttle) {
            return bad(format!("min_throttle must lie in [0, 1), got {}", self.min_throttle));
        }
        let grid: Vec<f64> = (0..=100).map(|i| self.min_throttle + (1.0 - self.min_throttle) * i as f64 / 100.0).collect();
        if grid.iter().any(|&u| !(self.tau(u) > 0.0)) {
            return bad("time constant must stay positive over [min_throttle, 1]".into());
        }
        if grid.windows(2).any(|w| self.steady_thrust(w[1]) < self.steady_thrust(w[0]) - 1e-9) {
            return bad("steady-state thrust must be non-decreasing in throttle".into());
        }
        if self.steady_thrust(1.0) > self.max_thrust + 1e-9 {
            return bad("steady-state thrust at full throttle exceeds max_thrust".into());
        }
        Ok(())
    }
}

/// The shipped engine: 40 N at 15 % throttle, 250 N at full throttle, time
/// constant falling from 0.35 s at idle to 0.15 s at full throttle.
pub fn calibrate_default() -> JetParams {
    let (u_min, t_min, t_max): (f64, f64, f64) = (0.15, 40.0, 250.0);
    // cubic in s = (u - u_min)/(1 - u_min), monotone on [0, 1]
    let shape = [0.0, 0.5, 0.3, 0.2];
    let span = 1.0 - u_min;
    // expand sum_j shape_j ((u - u_min)/span)^j into powers of u
    let mut coeffs = vec![t_min, 0.0, 0.0, 0.0];
    for (j, &w) in shape.iter().enumerate().skip(1) {
        let scale = (t_max - t_min) * w / span.powi(j as i32);
        for i in 0..=j {
            let binom = (1..=i).fold(1.0, |acc, m| acc * (j - m + 1) as f64 / m as f64);
            coeffs[i] += scale * binom * (-u_min).powi((j - i) as i32);
        }
    }
    let slope = -0.2 / span;
    JetParams {
        steady_state: coeffs,
        time_constant: [0.35 - slope * u_min, slope],
        min_throttle: u_min,
        max_thrust: t_max,
        max_slew: 250.0,
    }
}

/// Ideal mode: the command is the thrust rate (N/s), limited to ±`rate_limit`.
pub fn ideal_update(prev: f64, rate: f64, dt: f64, max_thrust: f64, rate_limit: f64) -> f64 {
    (prev + rate.clamp(-rate_limit, rate_limit) * dt).clamp(0.0, max_thrust)
}

/// One forward-Euler step of the lag model for absolute throttle `u`.
pub fn lag_update(params: &JetParams, prev: f64, u: f64, dt: f64) -> f64 {
    let u = params.clamp_throttle(u);
    let rate = ((params.steady_thrust(u) - prev) / params.tau(u)).clamp(-params.max_slew, params.max_slew);
    (prev + rate * dt).clamp(0.0, params.max_thrust)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThrottleLog {
    pub time: Vec<f64>,
    pub throttle: Vec<f64>,
    pub thrust: Vec<f64>,
}

impl ThrottleLog {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn validate(&self) -> Result<(), JetError> {
        if self.throttle.len() != self.time.len() || self.thrust.len() != self.time.len() {
            return Err(JetError::InvalidLog("column lengths differ".into()));
        }
        if self.time.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(JetError::InvalidLog("timestamps must be strictly increasing".into()));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.time) || !finite(&self.throttle) || !finite(&self.thrust) {
            return Err(JetError::InvalidLog("non-finite entry".into()));
        }
        Ok(())
    }

    /// Three whitespace-separated columns: time, throttle, thrust.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# time_s throttle thrust_n\n");
        for k in 0..self.len() {
            let _ = writeln!(out, "{} {} {}", self.time[k], self.throttle[k], self.thrust[k]);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, JetError> {
        let mut log = ThrottleLog { time: vec![], throttle: vec![], thrust: vec![] };
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<f64> = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|e| JetError::InvalidLog(format!("line {}: {e}", n + 1)))?;
            if cols.len() != 3 {
                return Err(JetError::InvalidLog(format!("line {}: expected 3 columns, got {}", n + 1, cols.len())));
            }
            log.time.push(cols[0]);
            log.throttle.push(cols[1]);
            log.thrust.push(cols[2]);
        }
        log.validate()?;
        Ok(log)
    }
}

/// Integrate the lag model over `profile`, starting settled at the first
/// throttle, and record thrust with additive Gaussian noise of std `noise`.
pub fn simulate_log(params: &JetParams, profile: &[f64], dt: f64, noise: f64, rng: &mut impl Rng) -> ThrottleLog {
    let clean = integrate(params, profile, &vec![dt; profile.len()], None);
    let dist = Normal::new(0.0, noise.max(0.0)).expect("finite noise");
    let thrust = clean.into_iter().map(|t| if noise > 0.0 { t + dist.sample(rng) } else { t }).collect();
    ThrottleLog {
        time: (0..profile.len()).map(|k| k as f64 * dt).collect(),
        throttle: profile.to_vec(),
        thrust,
    }
}

/// Model thrust along a throttle sequence. `dts[k]` is the step leading into
/// sample k (ignored for k = 0).
fn integrate(params: &JetParams, throttle: &[f64], dts: &[f64], initial: Option<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(throttle.len());
    let Some(&u0) = throttle.first() else { return out };
    let mut t = initial.unwrap_or_else(|| params.steady_thrust(params.clamp_throttle(u0)).clamp(0.0, params.max_thrust));
    out.push(t);
    for k in 1..throttle.len() {
        t = lag_update(params, t, throttle[k], dts[k]);
        out.push(t);
    }
    out
}

/// Piecewise-constant throttle between `min_throttle` and 1 with holds of
/// 0.5 to 3 s.
pub fn staircase_profile(samples: usize, dt: f64, min_throttle: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut out = Vec::with_capacity(samples);
    while out.len() < samples {
        let level = rng.random_range(min_throttle..=1.0);
        let hold = (rng.random_range(0.5..3.0) / dt).round() as usize;
        out.extend(std::iter::repeat_n(level, hold.max(1)));
    }
    out.truncate(samples);
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub mae_n: f64,
    pub rmse_n: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub mae_n: f64,
    pub rmse_n: f64,
    pub samples: usize,
    pub steady_state: Vec<f64>,
    pub time_constant: [f64; 2],
}

impl FitReport {
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("report serializes")
    }
}

/// Integrate `params` over each log's throttle (starting from its first
/// measured thrust) and compare with the measured thrust.
pub fn evaluate_fit(params: &JetParams, logs: &[ThrottleLog]) -> ErrorReport {
    let (mut abs, mut sq, mut n) = (0.0, 0.0, 0usize);
    for log in logs {
        let sim = integrate(params, &log.throttle, &step_sizes(&log.time), Some(log.thrust[0]));
        for (s, m) in sim.iter().zip(&log.thrust) {
            abs += (s - m).abs();
            sq += (s - m).powi(2);
            n += 1;
        }
    }
    let n_f = n.max(1) as f64;
    ErrorReport { mae_n: abs / n_f, rmse_n: (sq / n_f).sqrt(), samples: n }
}

fn step_sizes(time: &[f64]) -> Vec<f64> {
    let mut dts = vec![0.0; time.len()];
    for k in 1..time.len() {
        dts[k] = time[k] - time[k - 1];
    }
    dts
}

/// Known engine limits the fit does not estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitLimits {
    pub min_throttle: f64,
    pub max_thrust: f64,
    pub max_slew: f64,
}

impl Default for FitLimits {
    fn default() -> Self {
        let d = calibrate_default();
        Self { min_throttle: d.min_throttle, max_thrust: d.max_thrust, max_slew: d.max_slew }
    }
}

/// Identify steady-state and time-constant coefficients.
///
/// Stage one rearranges the discrete lag model into a linear regression,
/// `T[k-1] = T_ss(u) - (a + b u) dT/dt`, solved by least squares on samples
/// where neither the slew limit nor the thrust bounds are active. Stage two
/// refines all coefficients by Levenberg-Marquardt on the integrated
/// (output-error) trajectory, which removes the errors-in-variables bias
/// that measurement noise induces in stage one.
pub fn fit(logs: &[ThrottleLog], order: usize, limits: FitLimits) -> Result<(JetParams, FitReport), JetError> {
    if logs.is_empty() || logs.iter().all(|l| l.len() < 100) {
        return Err(JetError::InsufficientData("need at least one log with >= 100 samples".into()));
    }
    for log in logs {
        log.validate()?;
    }
    let n_coef = order + 1;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs = Vec::new();
    for log in logs {
        for k in 1..log.len() {
            let dt = log.time[k] - log.time[k - 1];
            let u = log.throttle[k].clamp(limits.min_throttle, 1.0);
            let (prev, cur) = (log.thrust[k - 1], log.thrust[k]);
            let rate = (cur - prev) / dt;
            let on_bound = cur <= 0.0 || cur >= limits.max_thrust;
            if rate.abs() >= limits.max_slew * (1.0 - 1e-9) || on_bound {
                continue;
            }
            let mut row: Vec<f64> = (0..n_coef).map(|j| u.powi(j as i32)).collect();
            row.push(-rate);
            row.push(-u * rate);
            rows.push(row);
            rhs.push(prev);
        }
    }
    let theta = least_squares(&rows, &rhs)?;
    let mut params = JetParams {
        steady_state: theta[..n_coef].to_vec(),
        time_constant: [theta[n_coef], theta[n_coef + 1]],
        min_throttle: limits.min_throttle,
        max_thrust: limits.max_thrust,
        max_slew: limits.max_slew,
    };
    let grid_ok = (0..=20).all(|i| params.tau(limits.min_throttle + (1.0 - limits.min_throttle) * i as f64 / 20.0) > 1e-3);
    if !grid_ok {
        params.time_constant = [0.25, 0.0];
    }
    // Noisy differences bias the regression toward tiny time constants, where
    // the slew limit hides the lag and the refinement stalls; a start from
    // settled plateaus does not depend on differences at all.
    let mut params = refine_output_error(params, logs);
    if let Some(start) = plateau_start(logs, n_coef, limits) {
        let alt = refine_output_error(start, logs);
        if output_cost(&alt, logs) < output_cost(&params, logs) {
            params = alt;
        }
    }
    let err = evaluate_fit(&params, logs);
    let report = FitReport {
        mae_n: err.mae_n,
        rmse_n: err.rmse_n,
        samples: err.samples,
        steady_state: params.steady_state.clone(),
        time_constant: params.time_constant,
    };
    Ok((params, report))
}

/// Column-scaled SVD least squares with an explicit rank check.
fn least_squares(rows: &[Vec<f64>], rhs: &[f64]) -> Result<Vec<f64>, JetError> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.len() < cols || cols == 0 {
        return Err(JetError::RankDeficient);
    }
    let mut a = DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]);
    let scales: Vec<f64> = (0..cols).map(|j| a.column(j).norm()).collect();
    if scales.iter().any(|&s| s == 0.0) {
        return Err(JetError::RankDeficient);
    }
    for (j, s) in scales.iter().enumerate() {
        a.column_mut(j).scale_mut(1.0 / s);
    }
    let b = DVector::from_column_slice(rhs);
    let svd = a.svd(true, true);
    let sv = &svd.singular_values;
    let max = sv.max();
    if sv.min() <= 1e-10 * max {
        return Err(JetError::RankDeficient);
    }
    let x = svd.solve(&b, 0.0).map_err(|_| JetError::RankDeficient)?;
    Ok(x.iter().zip(&scales).map(|(v, s)| v / s).collect())
}

fn pack(p: &JetParams) -> Vec<f64> {
    let mut v = p.steady_state.clone();
    v.extend_from_slice(&p.time_constant);
    v
}

fn unpack(template: &JetParams, v: &[f64]) -> JetParams {
    let n = template.steady_state.len();
    JetParams { steady_state: v[..n].to_vec(), time_constant: [v[n], v[n + 1]], ..template.clone() }
}

fn output_residuals(p: &JetParams, logs: &[ThrottleLog]) -> Vec<f64> {
    let mut r = Vec::new();
    for log in logs {
        let sim = integrate(p, &log.throttle, &step_sizes(&log.time), Some(log.thrust[0]));
        r.extend(sim.iter().zip(&log.thrust).map(|(s, m)| s - m));
    }
    r
}

fn output_cost(p: &JetParams, logs: &[ThrottleLog]) -> f64 {
    output_residuals(p, logs).iter().map(|x| x * x).sum()
}

/// Steady-state polynomial fitted to the mean thrust over the last 40 % of
/// every constant-throttle hold longer than 1 s, with a 0.25 s time constant.
fn plateau_start(logs: &[ThrottleLog], n_coef: usize, limits: FitLimits) -> Option<JetParams> {
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for log in logs {
        let mut start = 0;
        for k in 1..=log.len() {
            if k < log.len() && log.throttle[k] == log.throttle[start] {
                continue;
            }
            if log.time[k - 1] - log.time[start] > 1.0 {
                let from = start + (k - start) * 3 / 5;
                let mean = log.thrust[from..k].iter().sum::<f64>() / (k - from) as f64;
                let u = log.throttle[start].clamp(limits.min_throttle, 1.0);
                rows.push((0..n_coef).map(|j| u.powi(j as i32)).collect::<Vec<_>>());
                rhs.push(mean);
            }
            start = k;
        }
    }
    let coef = least_squares(&rows, &rhs).ok()?;
    Some(JetParams {
        steady_state: coef,
        time_constant: [0.25, 0.0],
        min_throttle: limits.min_throttle,
        max_thrust: limits.max_thrust,
        max_slew: limits.max_slew,
    })
}

fn refine_output_error(start: JetParams, logs: &[ThrottleLog]) -> JetParams {
    let cost = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>();
    let mut theta = pack(&start);
    let mut res = output_residuals(&start, logs);
    let mut current = cost(&res);
    let mut mu = 1e-3;
    for _ in 0..50 {
        let p = unpack(&start, &theta);
        let n = theta.len();
        let mut jac = DMatrix::zeros(res.len(), n);
        for i in 0..n {
            let h = 1e-6 * theta[i].abs().max(1e-2);
            let mut bumped = theta.clone();
            bumped[i] += h;
            let r2 = output_residuals(&unpack(&p, &bumped), logs);
            for (row, (a, b)) in r2.iter().zip(&res).enumerate() {
                jac[(row, i)] = (a - b) / h;
            }
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * DVector::from_column_slice(&res);
        let mut improved = false;
        for _ in 0..10 {
            let mut lhs = jtj.clone();
            for i in 0..n {
                lhs[(i, i)] += mu * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = lhs.lu().solve(&(-&jtr)) else { break };
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, d)| a + d).collect();
            let cand_p = unpack(&p, &cand);
            if (0..=10).any(|i| cand_p.tau(cand_p.min_throttle + (1.0 - cand_p.min_throttle) * i as f64 / 10.0) <= 1e-3) {
                mu *= 10.0;
                continue;
            }
            let r2 = output_residuals(&cand_p, logs);
            let c2 = cost(&r2);
            if c2 < current {
                let rel = (current - c2) / current.max(1e-300);
                theta = cand;
                res = r2;
                current = c2;
                mu = (mu / 3.0).max(1e-12);
                improved = rel > 1e-12;
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    unpack(&start, &theta)
}

/// `count` staircase logs of `samples` points at `dt`, with measurement noise.
pub fn synthetic_logs(
    params: &JetParams,
    count: usize,
    samples: usize,
    dt: f64,
    noise: f64,
    rng: &mut impl Rng,
) -> Vec<ThrottleLog> {
    (0..count)
        .map(|_| {
            let profile = staircase_profile(samples, dt, params.min_throttle, rng);
            simulate_log(params, &profile, dt, noise, rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn simple(steady: f64, tau: f64) -> JetParams {
        JetParams {
            steady_state: vec![steady],
            time_constant: [tau, 0.0],
            min_throttle: 0.0,
            max_thrust: 250.0,
            max_slew: f64::INFINITY,
        }
    }

    #[test]
    fn ideal_examples() {
        let t = ideal_update(100.0, 50.0, 1.0 / 60.0, 250.0, 250.0);
        assert!((t - (100.0 + 50.0 / 60.0)).abs() < 1e-12);
        assert_eq!(ideal_update(100.0, 0.0, 0.1, 250.0, 250.0), 100.0);
        assert_eq!(ideal_update(250.0, 10.0, 0.1, 250.0, 250.0), 250.0);
        assert_eq!(ideal_update(0.0, -100.0, 0.1, 250.0, 250.0), 0.0);
        // rate limit
        assert!((ideal_update(0.0, 1e6, 0.1, 250.0, 250.0) - 25.0).abs() < 1e-12);
    }

    #[test]
    fn lag_euler_step_and_fixed_point() {
        let p = simple(100.0, 0.5);
        assert!((lag_update(&p, 0.0, 0.5, 0.1) - 20.0).abs() < 1e-12);
        assert_eq!(lag_update(&p, 100.0, 0.5, 0.1), 100.0);
    }

    #[test]
    fn lag_settles_within_five_time_constants() {
        let p = calibrate_default();
        let p = JetParams { max_slew: f64::INFINITY, ..p };
        for u in [0.2, 0.5, 0.9] {
            let target = p.steady_thrust(u);
            let tau = p.tau(u);
            let dt = 1.0 / 240.0;
            let mut t = 0.0;
            for _ in 0..(5.0 * tau / dt).ceil() as usize {
                t = lag_update(&p, t, u, dt);
            }
            assert!((t - target).abs() < 0.01 * target, "u = {u}");
        }
    }

    #[test]
    fn throttle_below_minimum_is_raised() {
        let p = calibrate_default();
        let a = lag_update(&p, 100.0, 0.0, 0.01);
        let b = lag_update(&p, 100.0, p.min_throttle, 0.01);
        assert_eq!(a, b);
    }

    #[test]
    fn default_engine_matches_reference_points() {
        let p = calibrate_default();
        assert!((p.steady_thrust(0.15) - 40.0).abs() < 1e-9);
        assert!((p.steady_thrust(1.0) - 250.0).abs() < 1e-9);
        assert!((p.tau(0.15) - 0.35).abs() < 1e-12);
        assert!((p.tau(1.0) - 0.15).abs() < 1e-12);
        p.validate().unwrap();
    }

    #[test]
    fn noiseless_log_is_exact_and_step_rises_monotonically() {
        let p = calibrate_default();
        let mut profile = vec![0.15; 10];
        profile.extend(vec![0.8; 400]);
        let log = simulate_log(&p, &profile, 0.01, 0.0, &mut ChaCha8Rng::seed_from_u64(0));
        let clean = integrate(&p, &profile, &vec![0.01; profile.len()], None);
        assert_eq!(log.thrust, clean);
        assert!(log.thrust.windows(2).all(|w| w[1] >= w[0]));
        assert!((log.thrust.last().unwrap() - p.steady_thrust(0.8)).abs() < 1e-6);
    }

    #[test]
    fn simulate_is_deterministic() {
        let p = calibrate_default();
        let prof = staircase_profile(300, 0.01, 0.15, &mut ChaCha8Rng::seed_from_u64(3));
        let a = simulate_log(&p, &prof, 0.01, 5.0, &mut ChaCha8Rng::seed_from_u64(9));
        let b = simulate_log(&p, &prof, 0.01, 5.0, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn constant_throttle_is_rank_deficient() {
        let p = calibrate_default();
        let log = simulate_log(&p, &vec![0.5; 500], 0.01, 0.0, &mut ChaCha8Rng::seed_from_u64(0));
        // start away from steady state so the rate column is not zero
        let mut log = log;
        let mut t = 40.0;
        for k in 0..log.len() {
            log.thrust[k] = t;
            t = lag_update(&p, t, 0.5, 0.01);
        }
        assert!(matches!(fit(&[log], 3, FitLimits::default()), Err(JetError::RankDeficient)));
    }

    #[test]
    fn short_logs_are_rejected() {
        let p = calibrate_default();
        let log = simulate_log(&p, &vec![0.5; 50], 0.01, 0.0, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(fit(&[log], 3, FitLimits::default()), Err(JetError::InsufficientData(_))));
    }

    #[test]
    fn log_text_round_trip_and_validation() {
        let p = calibrate_default();
        let prof = staircase_profile(120, 0.01, 0.15, &mut ChaCha8Rng::seed_from_u64(1));
        let log = simulate_log(&p, &prof, 0.01, 1.0, &mut ChaCha8Rng::seed_from_u64(2));
        let back = ThrottleLog::from_text(&log.to_text()).unwrap();
        assert_eq!(back, log);
        assert!(ThrottleLog::from_text("0 0.5 1\n0 0.5 1\n").is_err());
        assert!(ThrottleLog::from_text("0 0.5\n").is_err());
    }
}
