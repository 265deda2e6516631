//! Exact moments of `S_n` and of the martingale
//! `M_n = a_n S_n − ω A_n = a_n (S_n − n p) + p θ`, the limit moments of
//! `L = lim n^{1−θ}(S_n/n − p)`, and the martingale transform of a path.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::gamma_seq::{a_closed_form, ln_gamma_ratio, GammaRatioTable};
use crate::process::{mixed_probability, success_probability, ModelParams, ProcessState, Trajectory};

/// Exact first and second moments at one `n`, from [`MomentRecursion`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentState {
    pub n: u64,
    /// `a_n`.
    pub a: f64,
    /// `E[S_n] − n p = (α − p)/a_n`.
    pub mean_offset: f64,
    /// `E[(S_n − n p)²]`.
    pub centered_second: f64,
    /// `a_n² E[(S_n − n p)²]`, carried separately so it never cancels.
    pub scaled_second: f64,
}

impl MomentState {
    pub fn mean(&self, p: f64) -> f64 {
        self.n as f64 * p + self.mean_offset
    }

    pub fn variance(&self) -> f64 {
        self.centered_second - self.mean_offset * self.mean_offset
    }
}

/// Forward recursion for the centered moments of `Y_n = S_n − n p`:
///
/// ```text
/// E[Y_{n+1}]  = (1 + θ/n) E[Y_n]
/// E[Y_{n+1}²] = (1 + 2θ/n) E[Y_n²] + p(1 − p) + (1 − 2p) θ E[Y_n]/n
/// ```
///
/// started from `Y_1 = X_1 − p`. Yields `n = 1, 2, …` without end.
#[derive(Debug, Clone)]
pub struct MomentRecursion {
    theta: f64,
    p: f64,
    state: MomentState,
    started: bool,
}

impl MomentRecursion {
    pub fn new(params: &ModelParams) -> Self {
        let (p, alpha) = (params.p(), params.alpha());
        let w1 = alpha * (1.0 - p) * (1.0 - p) + (1.0 - alpha) * p * p;
        MomentRecursion {
            theta: params.theta(),
            p,
            state: MomentState {
                n: 1,
                a: 1.0,
                mean_offset: alpha - p,
                centered_second: w1,
                scaled_second: w1,
            },
            started: false,
        }
    }

    /// The state at `n ≥ 1`.
    pub fn at(params: &ModelParams, n: u64) -> MomentState {
        assert!(n >= 1);
        MomentRecursion::new(params)
            .nth((n - 1) as usize)
            .expect("unbounded iterator")
    }
}

impl Iterator for MomentRecursion {
    type Item = MomentState;

    fn next(&mut self) -> Option<MomentState> {
        if !self.started {
            self.started = true;
            return Some(self.state);
        }
        let (theta, p) = (self.theta, self.p);
        let s = self.state;
        let n = s.n as f64;
        let grow = 1.0 + theta / n;
        let a = s.a / grow;
        let inc = p * (1.0 - p) + (1.0 - 2.0 * p) * theta * s.mean_offset / n;
        let centered = (1.0 + 2.0 * theta / n) * s.centered_second + inc;
        let scaled = s.scaled_second * ((1.0 + 2.0 * theta / n) / (grow * grow)) + a * a * inc;
        self.state = MomentState {
            n: s.n + 1,
            a,
            mean_offset: s.mean_offset * grow,
            centered_second: centered,
            scaled_second: scaled,
        };
        Some(self.state)
    }
}

/// `E[S_n] = n p + (α − p)/a_n`, which equals `(α + ω(A_n − 1))/a_n`.
pub fn mean_sn(params: &ModelParams, n: u64) -> f64 {
    assert!(n >= 1);
    if n == 1 {
        return params.alpha();
    }
    n as f64 * params.p() + (params.alpha() - params.p()) / a_closed_form(params.theta(), n)
}

/// `E[S_n²]` by iterating `E[S_{n+1}²] = g_n E[S_n²] + h_n` with
/// `g_n = 1 + 2θ/n`, `h_n = (2ω + θ/n) E[S_n] + ω`, from `E[S_1²] = α`.
pub fn second_moment_sn_recursive(params: &ModelParams, n: u64) -> f64 {
    assert!(n >= 1);
    let (theta, omega) = (params.theta(), params.omega());
    let mut m1 = params.alpha();
    let mut m2 = params.alpha();
    for k in 1..n {
        let kf = k as f64;
        m2 = (1.0 + 2.0 * theta / kf) * m2 + (2.0 * omega + theta / kf) * m1 + omega;
        m1 = (1.0 + theta / kf) * m1 + omega;
    }
    m2
}

/// `E[S_n²]` from the closed gamma-ratio expression, with every `Γ(n + c)/Γ(n)`
/// evaluated as a log-gamma ratio. The expression has a `(2θ − 1)`
/// denominator; at `θ = 1/2` this delegates to the recursion.
pub fn second_moment_sn_closed(params: &ModelParams, n: u64) -> f64 {
    assert!(n >= 1);
    let (theta, p, alpha, omega) = (params.theta(), params.p(), params.alpha(), params.omega());
    if theta == 0.5 {
        return second_moment_sn_recursive(params, n);
    }
    let nf = n as f64;
    let r2 = ln_gamma_ratio(nf, 2.0 * theta).exp() / gamma(1.0 + 2.0 * theta);
    let r1 = ln_gamma_ratio(nf, theta).exp() / gamma(1.0 + theta);
    let t1 = alpha * r2;
    let t2 = p * ((1.0 - 2.0 * omega) / (2.0 * theta - 1.0) * (r2 - nf) - p * (2.0 * r2 - nf * (nf + 1.0)));
    let t3 = (alpha - p) * ((1.0 - 2.0 * omega) * (r2 - r1) - 2.0 * p * ((theta + 1.0) * r2 - (nf + theta) * r1));
    t1 + t2 + t3
}

/// Exact `Var(S_n)`.
pub fn variance_sn(params: &ModelParams, n: u64) -> f64 {
    MomentRecursion::at(params, n).variance()
}

/// Leading-order `Var(S_n)` for `α = p`:
/// `p(1−p) n/(1−2θ)` for `θ < 1/2`, `p(1−p) n log n` at `θ = 1/2`, and
/// `p(1−p) n^{2θ}/((2θ−1) Γ(θ))` for `θ > 1/2`, the constant as printed.
pub fn variance_asymptotic(params: &ModelParams, n: u64) -> Result<f64> {
    if !params.is_stationary() {
        return Err(Error::domain(format!(
            "asymptotic variance is stated for alpha = p (alpha = {}, p = {})",
            params.alpha(),
            params.p()
        )));
    }
    let (theta, nf) = (params.theta(), n as f64);
    let pq = params.bernoulli_variance();
    Ok(if theta < 0.5 {
        pq * nf / (1.0 - 2.0 * theta)
    } else if theta == 0.5 {
        pq * nf * nf.ln()
    } else {
        pq * nf.powf(2.0 * theta) / ((2.0 * theta - 1.0) * gamma(theta))
    })
}

/// `E[M_n] = α − ω` for every `n`.
pub fn mean_mn(params: &ModelParams) -> f64 {
    params.alpha() - params.omega()
}

/// Exact `E[M_n²] = a_n² E[S_n²] − 2ω A_n (α − ω) − ω² A_n²`, evaluated as
/// `a_n² E[(S_n − np)²] + 2pθ(α − p) + p²θ²` to avoid cancellation.
pub fn second_moment_mn(params: &ModelParams, n: u64) -> f64 {
    let s = MomentRecursion::at(params, n);
    second_moment_mn_from(params, &s)
}

pub(crate) fn second_moment_mn_from(params: &ModelParams, s: &MomentState) -> f64 {
    let (theta, p, alpha) = (params.theta(), params.p(), params.alpha());
    s.scaled_second + 2.0 * p * theta * (alpha - p) + p * p * theta * theta
}

fn require_superdiffusive(theta: f64, what: &str) -> Result<()> {
    if theta > 0.5 {
        Ok(())
    } else {
        Err(Error::domain(format!("{what} requires theta > 1/2 (theta = {theta})")))
    }
}

fn l_bracket(params: &ModelParams) -> f64 {
    let (theta, p, alpha) = (params.theta(), params.p(), params.alpha());
    alpha + (alpha - p) * (1.0 - 4.0 * p) + p * (1.0 - 2.0 * theta * p) / (2.0 * theta - 1.0)
}

/// `lim E[M_n²]` for `θ > 1/2`.
pub fn second_moment_mn_limit(params: &ModelParams) -> Result<f64> {
    let (theta, p, alpha) = (params.theta(), params.p(), params.alpha());
    require_superdiffusive(theta, "lim E[M_n^2]")?;
    let g = gamma(theta + 1.0);
    Ok(g * g / gamma(2.0 * theta + 1.0) * l_bracket(params) + theta * p * (2.0 * (alpha - p) + theta * p))
}

/// First two moments of `L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LMoments {
    pub mean_l: f64,
    pub second_moment_l: f64,
    pub variance_l: f64,
}

pub fn moments_l(params: &ModelParams) -> Result<LMoments> {
    let theta = params.theta();
    require_superdiffusive(theta, "the limit L")?;
    let mean_l = (params.alpha() - params.p()) / gamma(theta + 1.0);
    let second_moment_l = l_bracket(params) / gamma(2.0 * theta + 1.0);
    Ok(LMoments {
        mean_l,
        second_moment_l,
        variance_l: second_moment_l - mean_l * mean_l,
    })
}

/// `E[ξ_{n+1}² | F_n] = q(1 − q)` with `q` the success probability at `state`.
pub fn conditional_xi_variance(params: &ModelParams, state: ProcessState) -> f64 {
    let q = success_probability(params, state);
    q * (1.0 - q)
}

/// Tail-variance proxy `r_n² ≈ p(1−p) n a_n²/(2θ − 1)` for `θ > 1/2`.
pub fn r_tail(params: &ModelParams, n: u64) -> Result<f64> {
    let theta = params.theta();
    require_superdiffusive(theta, "r_n^2")?;
    let a = a_closed_form(theta, n);
    Ok(params.bernoulli_variance() * n as f64 * a * a / (2.0 * theta - 1.0))
}

/// `M_n` along a trajectory, with increments and predictable quadratic
/// variation when the trajectory is dense.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleView {
    pub n: Vec<u64>,
    pub m: Vec<f64>,
    /// `ξ_1 = S_1 − ω`, `ξ_n = X_n − q_{n−1}`.
    pub xi: Option<Vec<f64>>,
    /// `⟨M⟩_n = E[ξ_1²] + Σ_{2≤k≤n} a_k² q_{k−1}(1 − q_{k−1})`.
    pub qv: Option<Vec<f64>>,
}

pub fn martingale_transform(traj: &Trajectory, table: &GammaRatioTable) -> Result<MartingaleView> {
    let params = &traj.params;
    if table.theta() != params.theta() {
        return Err(Error::config("table theta differs from trajectory theta"));
    }
    if !table.covers(traj.horizon) {
        return Err(Error::config(format!(
            "table covers n <= {} but the horizon is {}",
            table.n_max(),
            traj.horizon
        )));
    }
    let omega = params.omega();
    let (n, m): (Vec<u64>, Vec<f64>) = traj
        .checkpoints
        .iter()
        .map(|&(k, s)| (k, table.a(k) * s as f64 - omega * table.big_a(k)))
        .unzip();
    if !traj.is_dense() {
        return Ok(MartingaleView {
            n,
            m,
            xi: None,
            qv: None,
        });
    }
    let theta = params.theta();
    let alpha = params.alpha();
    let mut xi = Vec::with_capacity(n.len());
    let mut qv = Vec::with_capacity(n.len());
    let mut prev_s = 0u64;
    let mut bracket = alpha * (1.0 - omega).powi(2) + (1.0 - alpha) * omega * omega;
    for &(k, s) in &traj.checkpoints {
        let x = (s - prev_s) as f64;
        if k == 1 {
            xi.push(x - omega);
        } else {
            let q = mixed_probability(omega, theta, prev_s as f64, 1.0 / (k - 1) as f64);
            xi.push(x - q);
            let a = table.a(k);
            bracket += a * a * q * (1.0 - q);
        }
        qv.push(bracket);
        prev_s = s;
    }
    Ok(MartingaleView {
        n,
        m,
        xi: Some(xi),
        qv: Some(qv),
    })
}
