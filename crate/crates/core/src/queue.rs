//! M/D/1 edge server: equilibrium state probabilities and the FCFS waiting-time
//! distribution.
//!
//! The number in system sampled every service time `D` apart obeys Fry's state
//! equation `N(t+D) = max(N(t) − 1, 0) + A`, with `A ~ Poisson(λD)` arrivals
//! per interval. The equilibrium probabilities are obtained from the
//! level-crossing form of those equations,
//!
//! ```text
//! p_j·a_0 = p_0·P(A ≥ j) + Σ_{i=1}^{j−1} p_i·P(A ≥ j − i + 1),   p_0 = 1 − ρ,
//! ```
//!
//! which only adds non-negative terms. A frame arriving at time 0 is served
//! within `t = (T + τ)·D` exactly when the work present one interval before
//! `τ·D`, minus the one departure that interval guarantees, plus the arrivals
//! during the remaining `(1 − τ)·D`, is at most `T`:
//!
//! ```text
//! P(W ≤ t) = Σ_{k=0}^{T} Q(T + 1 − k)·Poisson(k; ρ(1 − τ)),   Q(j) = Σ_{i≤j} p_i.
//! ```

use thiserror::Error;

/// Tail mass left out of the truncated state distribution.
pub const STATE_TAIL_MASS: f64 = 1e-10;

const MAX_STATES: usize = 1 << 26;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QueueError {
    #[error("load {rho} exceeds the admissible maximum {rho_max}")]
    Overload { rho: f64, rho_max: f64 },
    #[error("invalid queue input: {0}")]
    Invalid(&'static str),
    #[error("probability {p} outside the invertible range [{low}, 1)")]
    OutOfRange { p: f64, low: f64 },
}

/// Equilibrium description of an M/D/1 queue.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueModel {
    pub lambda_fps: f64,
    pub service_s: f64,
    pub rho: f64,
    /// `p_0 … p_N`.
    pub state_probs: Vec<f64>,
    pub n_states: usize,
    cumulative: Vec<f64>,
}

/// Poisson(m) probabilities, truncated once they underflow compared with the head.
fn poisson_pmf(mean: f64) -> Vec<f64> {
    if mean == 0.0 {
        return vec![1.0];
    }
    let mut pmf = vec![(-mean).exp()];
    let mut k = 1;
    loop {
        let next = pmf[k - 1] * mean / k as f64;
        if next < 1e-300 || (k as f64 > mean && next < 1e-30 * pmf[0]) {
            break;
        }
        pmf.push(next);
        k += 1;
    }
    pmf
}

/// `P(A ≥ k)` by backward summation, so tiny tails keep full relative precision.
fn upper_tails(pmf: &[f64]) -> Vec<f64> {
    let mut tails = vec![0.0; pmf.len() + 1];
    for k in (0..pmf.len()).rev() {
        tails[k] = tails[k + 1] + pmf[k];
    }
    tails
}

/// Builds the equilibrium model for arrival rate `lambda_fps` and service time `service_s`.
///
/// Loads above `rho_max` are rejected. A relative slack of `1e-12` lets sweeps
/// land exactly on `λ = ρ_max / D`.
pub fn build_queue(lambda_fps: f64, service_s: f64, rho_max: f64) -> Result<QueueModel, QueueError> {
    if !(lambda_fps >= 0.0 && lambda_fps.is_finite()) {
        return Err(QueueError::Invalid("arrival rate must be finite and non-negative"));
    }
    if !(service_s > 0.0 && service_s.is_finite()) {
        return Err(QueueError::Invalid("service time must be positive"));
    }
    let rho = lambda_fps * service_s;
    if rho > rho_max * (1.0 + 1e-12) || rho >= 1.0 {
        return Err(QueueError::Overload { rho, rho_max });
    }

    let pmf = poisson_pmf(rho);
    let tails = upper_tails(&pmf);
    let a0 = pmf[0];
    let mut probs = vec![1.0 - rho];
    let mut cumulative = vec![1.0 - rho];
    let mut capacity = (20.0 / (1.0 - rho)).ceil() as usize;
    loop {
        while probs.len() <= capacity {
            let j = probs.len();
            let lead = tails.get(j).copied().unwrap_or(0.0);
            let mut flow = probs[0] * lead;
            // only the last `tails.len()` states can reach level j
            let first = (j + 2).saturating_sub(tails.len()).max(1);
            for i in first..j {
                flow += probs[i] * tails[j - i + 1];
            }
            let p = flow / a0;
            probs.push(p);
            let c = cumulative[j - 1] + p;
            cumulative.push(c);
            if 1.0 - c < STATE_TAIL_MASS {
                break;
            }
        }
        let last = *cumulative.last().expect("non-empty");
        if 1.0 - last < STATE_TAIL_MASS || rho == 0.0 {
            break;
        }
        if capacity >= MAX_STATES {
            return Err(QueueError::Invalid("state truncation did not converge"));
        }
        capacity *= 2;
    }
    let n_states = probs.len() - 1;
    Ok(QueueModel {
        lambda_fps,
        service_s,
        rho,
        state_probs: probs,
        n_states,
        cumulative,
    })
}

impl QueueModel {
    /// `P(N ≤ j)` at equilibrium.
    ///
    /// Beyond the retained states the tail is extended geometrically with the
    /// ratio of the last two probabilities, which is the asymptotic decay.
    pub fn state_cdf(&self, j: usize) -> f64 {
        let n = self.n_states;
        if j <= n {
            return self.cumulative[j];
        }
        let tail = (1.0 - self.cumulative[n]).max(0.0);
        let ratio = if n >= 1 && self.state_probs[n - 1] > 0.0 {
            (self.state_probs[n] / self.state_probs[n - 1]).min(1.0 - 1e-12)
        } else {
            0.0
        };
        1.0 - tail * ratio.powf((j - n) as f64)
    }

    /// Pollaczek–Khinchine mean wait `ρD / (2(1 − ρ))`.
    pub fn mean_wait(&self) -> f64 {
        self.rho * self.service_s / (2.0 * (1.0 - self.rho))
    }

    /// `P(W ≤ t)` for a frame arriving at equilibrium.
    pub fn waiting_cdf(&self, t: f64) -> f64 {
        if t < 0.0 || t.is_nan() {
            return 0.0;
        }
        if self.rho == 0.0 {
            return 1.0;
        }
        if t.is_infinite() {
            return 1.0;
        }
        let x = t / self.service_s;
        let whole = x.floor();
        let frac = x - whole;
        let mean = self.rho * (1.0 - frac);
        let intervals = whole as usize;
        let mut term = (-mean).exp();
        let mut total = 0.0;
        for k in 0..=intervals {
            total += self.state_cdf(intervals + 1 - k) * term;
            term *= mean / (k + 1) as f64;
            if term < 1e-18 {
                break;
            }
        }
        total.clamp(0.0, 1.0)
    }

    /// Smallest `t` with `P(W ≤ t) ≥ p`, to within `1e-7·D`.
    pub fn waiting_quantile(&self, p: f64) -> Result<f64, QueueError> {
        let low = 1.0 - self.rho;
        if !(p >= low && p < 1.0) {
            return Err(QueueError::OutOfRange { p, low });
        }
        if p <= self.waiting_cdf(0.0) {
            return Ok(0.0);
        }
        let mut hi = self.service_s;
        while self.waiting_cdf(hi) < p {
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(QueueError::OutOfRange { p, low });
            }
        }
        let mut lo = 0.0;
        while hi - lo > 1e-7 * self.service_s {
            let mid = 0.5 * (lo + hi);
            if self.waiting_cdf(mid) >= p {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }
}

/// Free-function form of [`QueueModel::waiting_cdf`].
pub fn waiting_cdf(q: &QueueModel, t: f64) -> f64 {
    q.waiting_cdf(t)
}

/// Free-function form of [`QueueModel::waiting_quantile`].
pub fn waiting_quantile(q: &QueueModel, p: f64) -> Result<f64, QueueError> {
    q.waiting_quantile(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{integrate_semi_infinite_scaled, QuadratureSpec};

    #[test]
    fn empty_system() {
        let q = build_queue(0.0, 0.01, 0.99).unwrap();
        assert_eq!(q.state_probs[0], 1.0);
        assert_eq!(q.waiting_cdf(0.0), 1.0);
        assert_eq!(q.waiting_cdf(-1e-9), 0.0);
    }

    #[test]
    fn idle_probability() {
        let q = build_queue(50.0, 0.01, 0.99).unwrap();
        assert!((q.state_probs[0] - 0.5).abs() < 1e-12);
        assert!((q.waiting_cdf(0.0) - 0.5).abs() < 1e-12);
        let sum: f64 = q.state_probs.iter().sum();
        assert!((1.0 - 1e-9..=1.0 + 1e-12).contains(&sum));
    }

    #[test]
    fn reference_load_is_admitted() {
        let q = build_queue(100.0, 0.0098366, 0.99).unwrap();
        assert!((q.rho - 0.98366).abs() < 1e-12);
        assert!((q.state_probs[0] - (1.0 - q.rho)).abs() < 1e-9);
        assert!(q.state_probs.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn overload_rejected() {
        assert!(matches!(
            build_queue(100.0, 0.0099, 0.98),
            Err(QueueError::Overload { .. })
        ));
        assert!(build_queue(99.0, 0.01, 0.99).is_ok());
    }

    #[test]
    fn state_probabilities_match_brute_force_chain() {
        // iterate Fry's equation from an empty system until it settles
        let (rho, cap) = (0.7, 400);
        let pmf = poisson_pmf(rho);
        let mut p = vec![0.0; cap];
        p[0] = 1.0;
        for _ in 0..20_000 {
            let mut next = vec![0.0; cap];
            for (n, &pn) in p.iter().enumerate() {
                if pn == 0.0 {
                    continue;
                }
                let base = n.saturating_sub(1);
                for (k, &a) in pmf.iter().enumerate() {
                    if base + k < cap {
                        next[base + k] += pn * a;
                    }
                }
            }
            p = next;
        }
        let q = build_queue(rho, 1.0, 0.99).unwrap();
        for (j, (got, want)) in q.state_probs.iter().zip(&p).take(60).enumerate() {
            assert!((got - want).abs() < 1e-10, "state {j}");
        }
    }

    #[test]
    fn cdf_is_monotone_and_bounded() {
        let q = build_queue(90.0, 0.01, 0.99).unwrap();
        let mut last = 0.0;
        for i in 0..5000 {
            let t = i as f64 * 0.0005;
            let f = q.waiting_cdf(t);
            assert!((0.0..=1.0).contains(&f));
            assert!(f >= last - 1e-14, "t={t}");
            last = f;
        }
        assert!(q.waiting_cdf(100.0) > 1.0 - 1e-9);
    }

    #[test]
    fn cdf_is_continuous_across_service_multiples() {
        let q = build_queue(0.8, 1.0, 0.99).unwrap();
        for k in 1..20 {
            let t = k as f64;
            let left = q.waiting_cdf(t - 1e-12);
            let right = q.waiting_cdf(t);
            assert!((left - right).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn cdf_matches_crommelin_series_at_moderate_load() {
        // P(W ≤ t) = (1 − ρ) Σ_{j=0}^{⌊t⌋} e^{λ(t−j)} (λ(j−t))^j / j!  with D = 1
        let rho = 0.5;
        let q = build_queue(rho, 1.0, 0.99).unwrap();
        for t in [0.0, 0.3, 1.0, 1.7, 2.5, 4.2, 6.9] {
            let mut series = 0.0;
            let mut fact = 1.0;
            for j in 0..=(t as usize) {
                if j > 0 {
                    fact *= j as f64;
                }
                let x = rho * (j as f64 - t);
                series += (-x).exp() * x.powi(j as i32) / fact;
            }
            series *= 1.0 - rho;
            assert!((q.waiting_cdf(t) - series).abs() < 1e-10, "t={t}");
        }
    }

    #[test]
    fn mean_from_cdf_matches_pollaczek_khinchine() {
        for rho in [0.3, 0.6, 0.9] {
            let d = 0.01;
            let q = build_queue(rho / d, d, 0.99).unwrap();
            let spec = QuadratureSpec::new(1e-10, 1e-9, 2000, 1e-12).unwrap();
            // the survival function is smooth between multiples of D
            let mean =
                integrate_semi_infinite_scaled(|t| 1.0 - q.waiting_cdf(t), 0.0, d, &spec, None::<fn(f64) -> f64>)
                    .unwrap();
            let pk = q.mean_wait();
            assert!((mean / pk - 1.0).abs() < 5e-3, "rho={rho}: {mean} vs {pk}");
        }
    }

    #[test]
    fn heavier_load_is_stochastically_slower() {
        let d = 0.01;
        let qs: Vec<QueueModel> = [20.0, 50.0, 80.0, 95.0]
            .iter()
            .map(|&l| build_queue(l, d, 0.99).unwrap())
            .collect();
        for i in 1..400 {
            let t = i as f64 * 0.0025;
            for w in qs.windows(2) {
                assert!(w[1].waiting_cdf(t) < w[0].waiting_cdf(t) + 1e-15);
            }
        }
    }

    #[test]
    fn quantiles() {
        let q = build_queue(90.0, 0.01, 0.99).unwrap();
        assert_eq!(q.waiting_quantile(1.0 - q.rho).unwrap(), 0.0);
        assert!(q.waiting_quantile(1.0).is_err());
        assert!(q.waiting_quantile(0.05).is_err());
        let t = q.waiting_quantile(0.99).unwrap();
        assert!(q.waiting_cdf(t) >= 0.99);
        assert!(q.waiting_cdf(t - 1e-6 * q.service_s) < 0.99);
    }
}
