//! Stochastic reference simulators.
//!
//! * [`LinkSampler`]: SINR draws under exactly the assumptions of the
//!   analytical link model (PPP interferers outside radius `r`, i.i.d.
//!   Rayleigh distances to their own base stations, Rayleigh fading).
//! * [`VoronoiSampler`]: a full Poisson–Voronoi network where interferer
//!   positions and their link distances come from the actual geometry.
//! * [`mdi_des`]: Lindley-recursion simulation of the M/D/1 server.
//! * [`finite_coherence_uplink`]: block-fading transmission time.
//! * [`end_to_end_success`]: deadline hit rate combining the above.
//!
//! Every estimator splits its work into fixed chunks, chunk `i` drawing from
//! ChaCha8 stream `i` of the master seed. Chunks are reduced in index order,
//! so results are bit-identical for any number of worker threads.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use thiserror::Error;

use crate::detection;
use crate::numerics::{self, NumericsError, QuadratureSpec};
use crate::params::ValidatedConfig;
use crate::pipeline::{latency_budget, PipelineError};
use crate::radio::tx_power_law;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation input: {0}")]
    Invalid(&'static str),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// RNG for substream `index` of `seed`.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Samples per chunk; one substream each.
pub const CHUNK_SIZE: u64 = 1 << 14;

/// Running mean and sum of squared deviations (Welford / Chan).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * self.n as f64 * other.n as f64 / n as f64;
        self.n = n;
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }
}

/// Monte-Carlo mean with a normal-approximation 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEstimate {
    pub mean: f64,
    pub half_width_95: f64,
    pub n_samples: u64,
    pub seed: u64,
}

impl SimEstimate {
    pub fn from_moments(m: &Moments, seed: u64) -> Self {
        let se = if m.n > 0 {
            (m.variance() / m.n as f64).sqrt()
        } else {
            0.0
        };
        SimEstimate {
            mean: m.mean,
            half_width_95: 1.96 * se,
            n_samples: m.n,
            seed,
        }
    }

    pub fn std_error(&self) -> f64 {
        self.half_width_95 / 1.96
    }

    /// `|mean − value| ≤ k` standard errors.
    pub fn agrees_with(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.std_error()
    }
}

/// Runs `n` samples in `CHUNK_SIZE` pieces; `f(rng, count)` handles one piece.
fn chunked<R, F>(n: u64, seed: u64, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(&mut ChaCha8Rng, u64) -> R + Sync + Send,
{
    let chunks: Vec<(u64, u64)> = (0..n.div_ceil(CHUNK_SIZE))
        .map(|i| (i, CHUNK_SIZE.min(n - i * CHUNK_SIZE)))
        .collect();
    crate::ordered_map(&chunks, |&(i, count)| f(&mut substream(seed, i), count))
}

fn exp1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

/// Default simulation radius: ten mean cell radii `10/√(πλ_b)`.
pub fn default_sim_radius(lambda_b: f64) -> f64 {
    10.0 / (PI * lambda_b).sqrt()
}

/// `E[ℓ(r_z)]` for Rayleigh-distributed `r_z` with intensity `lambda`.
fn mean_power(cfg: &ValidatedConfig, lambda: f64) -> Result<f64, NumericsError> {
    // r = w/√(πλ) with density 2w·e^{−w²}
    let scale = (PI * lambda).sqrt();
    let mut breaks = vec![0.0, 0.5, 1.0, 2.0, 3.0, 7.0];
    let p = &cfg.power;
    if p.epsilon > 0.0 && p.ref_power_watt < p.peak_power_watt {
        let w_clip = (p.peak_power_watt / p.ref_power_watt).powf(1.0 / (cfg.network.alpha * p.epsilon)) * scale;
        if w_clip < 7.0 {
            breaks.push(w_clip);
            breaks.sort_by(f64::total_cmp);
        }
    }
    let spec = QuadratureSpec::new(1e-14, 1e-12, 400, 1e-16).expect("static spec");
    Ok(numerics::integrate_with_breaks(
        |w| 2.0 * w * (-w * w).exp() * tx_power_law(w / scale, cfg),
        &breaks,
        &spec,
    )?
    .value)
}

/// Mean interference from a PPP of intensity `lambda_u` beyond radius `r_sim`,
/// used in place of the truncated far field.
fn far_field_mean(cfg: &ValidatedConfig, r_sim: f64, mean_power: f64) -> f64 {
    let alpha = cfg.network.alpha;
    2.0 * PI * cfg.network.lambda_u * mean_power * r_sim.powf(2.0 - alpha) / (alpha - 2.0)
}

/// SINR sampler that follows the analytical link model.
#[derive(Debug, Clone)]
pub struct LinkSampler {
    pub r_km: f64,
    pub r_sim: f64,
    alpha: f64,
    lambda_u: f64,
    signal: f64,
    noise: f64,
    far_field: f64,
    cfg: ValidatedConfig,
    fading: bool,
    interference: bool,
}

impl LinkSampler {
    pub fn new(r_km: f64, cfg: &ValidatedConfig) -> Result<Self, SimError> {
        Self::with_radius(r_km, cfg, default_sim_radius(cfg.network.lambda_b))
    }

    pub fn with_radius(r_km: f64, cfg: &ValidatedConfig, r_sim: f64) -> Result<Self, SimError> {
        if !(r_km > 0.0 && r_sim > r_km) {
            return Err(SimError::Invalid("need 0 < r < simulation radius"));
        }
        let alpha = cfg.network.alpha;
        let ell = mean_power(cfg, cfg.network.lambda_u)?;
        Ok(LinkSampler {
            r_km,
            r_sim,
            alpha,
            lambda_u: cfg.network.lambda_u,
            signal: tx_power_law(r_km, cfg) * r_km.powf(-alpha),
            noise: cfg.noise_power_watt(),
            far_field: far_field_mean(cfg, r_sim, ell),
            cfg: *cfg,
            fading: true,
            interference: true,
        })
    }

    /// Unit channel gains instead of exponential fading.
    pub fn without_fading(mut self) -> Self {
        self.fading = false;
        self
    }

    /// Noise-only link.
    pub fn without_interference(mut self) -> Self {
        self.interference = false;
        self
    }

    fn gain<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.fading {
            exp1(rng)
        } else {
            1.0
        }
    }

    /// One interference realisation (W).
    pub fn interference<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if !self.interference {
            return 0.0;
        }
        let (r2, big2) = (self.r_km * self.r_km, self.r_sim * self.r_sim);
        let count = poisson(self.lambda_u * PI * (big2 - r2), rng);
        let rayleigh = 1.0 / (PI * self.lambda_u);
        let mut total = self.far_field;
        for _ in 0..count {
            let d2 = r2 + rng.random::<f64>() * (big2 - r2);
            let rz = (exp1(rng) * rayleigh).sqrt();
            total += self.gain(rng) * tx_power_law(rz, &self.cfg) * d2.powf(-0.5 * self.alpha);
        }
        total
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let s = self.gain(rng) * self.signal;
        s / (self.noise + self.interference(rng))
    }

    /// Block-fading transmission of `payload_bits`: one fresh SINR per block of
    /// `blocks_symbols` channel uses, stopping at `max_blocks`.
    pub fn coherence_uplink<R: Rng + ?Sized>(
        &self,
        payload_bits: f64,
        block_symbols: f64,
        bandwidth_hz: f64,
        max_blocks: u64,
        rng: &mut R,
    ) -> CoherenceSample {
        let target = payload_bits * (1.0 - 1e-12);
        let mut bits = 0.0;
        let mut blocks = 0;
        while bits < target && blocks < max_blocks {
            bits += block_symbols * (1.0 + self.sample(rng)).log2();
            blocks += 1;
        }
        CoherenceSample {
            seconds: blocks as f64 * block_symbols / bandwidth_hz,
            blocks,
            completed: bits >= target,
        }
    }
}

/// Convenience wrapper drawing one SINR at distance `r_km`.
pub fn sinr_sample_model_faithful<R: Rng + ?Sized>(
    r_km: f64,
    cfg: &ValidatedConfig,
    rng: &mut R,
) -> Result<f64, SimError> {
    Ok(LinkSampler::new(r_km, cfg)?.sample(rng))
}

/// Coverage and ergodic-rate estimates at one distance from a shared sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkEstimate {
    pub r_km: f64,
    pub coverage: Vec<(f64, SimEstimate)>,
    pub capacity_bps: SimEstimate,
}

/// Oracle estimates of `P(SINR ≥ γ | r)` for each `γ` and of `B·E[log2(1+SINR) | r]`.
pub fn link_estimate(
    r_km: f64,
    gammas: &[f64],
    cfg: &ValidatedConfig,
    n: u64,
    seed: u64,
) -> Result<LinkEstimate, SimError> {
    let sampler = LinkSampler::new(r_km, cfg)?;
    estimate_with(r_km, gammas, cfg.radio.bandwidth_hz, n, seed, |rng| sampler.sample(rng))
}

fn estimate_with<F>(
    r_km: f64,
    gammas: &[f64],
    bandwidth: f64,
    n: u64,
    seed: u64,
    draw: F,
) -> Result<LinkEstimate, SimError>
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync + Send,
{
    if n < 2 {
        return Err(SimError::Invalid("need at least two samples"));
    }
    let parts = chunked(n, seed, |rng, count| {
        let mut cov = vec![Moments::default(); gammas.len()];
        let mut cap = Moments::default();
        for _ in 0..count {
            let sinr = draw(rng);
            for (m, &g) in cov.iter_mut().zip(gammas) {
                m.push(if sinr >= g { 1.0 } else { 0.0 });
            }
            cap.push(bandwidth * sinr.ln_1p() / std::f64::consts::LN_2);
        }
        (cov, cap)
    });
    let mut cov = vec![Moments::default(); gammas.len()];
    let mut cap = Moments::default();
    for (c, k) in &parts {
        for (acc, m) in cov.iter_mut().zip(c) {
            acc.merge(m);
        }
        cap.merge(k);
    }
    Ok(LinkEstimate {
        r_km,
        coverage: gammas
            .iter()
            .zip(&cov)
            .map(|(&g, m)| (g, SimEstimate::from_moments(m, seed)))
            .collect(),
        capacity_bps: SimEstimate::from_moments(&cap, seed),
    })
}

/// Bucketed nearest-neighbour index over a fixed point set.
#[derive(Debug, Clone)]
struct NearestGrid {
    cell: f64,
    half: f64,
    side: usize,
    buckets: Vec<Vec<u32>>,
}

impl NearestGrid {
    fn new(points: &[[f64; 2]], half_extent: f64, cell: f64) -> Self {
        let side = ((2.0 * half_extent / cell).ceil() as usize).max(1);
        let mut buckets = vec![Vec::new(); side * side];
        let mut g = NearestGrid {
            cell,
            half: half_extent,
            side,
            buckets: Vec::new(),
        };
        for (i, p) in points.iter().enumerate() {
            let (cx, cy) = g.cell_of(p);
            buckets[cy * side + cx].push(i as u32);
        }
        g.buckets = buckets;
        g
    }

    fn cell_of(&self, p: &[f64; 2]) -> (usize, usize) {
        let f = |x: f64| (((x + self.half) / self.cell).floor().max(0.0) as usize).min(self.side - 1);
        (f(p[0]), f(p[1]))
    }

    /// Index of and squared distance to the nearest point.
    fn nearest(&self, points: &[[f64; 2]], q: &[f64; 2]) -> Option<(usize, f64)> {
        let (cx, cy) = self.cell_of(q);
        let mut best: Option<(usize, f64)> = None;
        for ring in 0..self.side {
            let lo_x = cx.saturating_sub(ring);
            let hi_x = (cx + ring).min(self.side - 1);
            let lo_y = cy.saturating_sub(ring);
            let hi_y = (cy + ring).min(self.side - 1);
            for y in lo_y..=hi_y {
                for x in lo_x..=hi_x {
                    let on_ring = x + ring == cx || x == cx + ring || y + ring == cy || y == cy + ring;
                    if !on_ring {
                        continue;
                    }
                    for &i in &self.buckets[y * self.side + x] {
                        let p = points[i as usize];
                        let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
                        if best.is_none_or(|(_, b)| d2 < b) {
                            best = Some((i as usize, d2));
                        }
                    }
                }
            }
            // anything beyond this ring is at least `ring·cell` away
            if let Some((_, b)) = best {
                let reach = ring as f64 * self.cell;
                if b <= reach * reach {
                    break;
                }
            }
        }
        best
    }
}

fn uniform_in_disc<R: Rng + ?Sized>(r_in: f64, r_out: f64, rng: &mut R) -> [f64; 2] {
    let d = (r_in * r_in + rng.random::<f64>() * (r_out * r_out - r_in * r_in)).sqrt();
    let theta = 2.0 * PI * rng.random::<f64>();
    [d * theta.cos(), d * theta.sin()]
}

/// Base stations and users of one Poisson network in a disc centred at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkRealization {
    pub r_sim: f64,
    pub bs_points: Vec<[f64; 2]>,
    pub user_points: Vec<[f64; 2]>,
    /// Index of the nearest base station of every user.
    pub associations: Vec<usize>,
}

impl NetworkRealization {
    pub fn sample<R: Rng + ?Sized>(lambda_b: f64, lambda_u: f64, r_sim: f64, rng: &mut R) -> Self {
        let area = PI * r_sim * r_sim;
        let bs_points: Vec<[f64; 2]> = (0..poisson(lambda_b * area, rng))
            .map(|_| uniform_in_disc(0.0, r_sim, rng))
            .collect();
        let user_points: Vec<[f64; 2]> = (0..poisson(lambda_u * area, rng))
            .map(|_| uniform_in_disc(0.0, r_sim, rng))
            .collect();
        let grid = NearestGrid::new(&bs_points, r_sim, 1.0 / lambda_b.sqrt());
        let associations = user_points
            .iter()
            .map(|u| grid.nearest(&bs_points, u).map_or(usize::MAX, |(i, _)| i))
            .collect();
        NetworkRealization {
            r_sim,
            bs_points,
            user_points,
            associations,
        }
    }

    /// Distance from `q` to its nearest base station.
    pub fn nearest_bs_distance(&self, q: [f64; 2]) -> Option<f64> {
        self.bs_points
            .iter()
            .map(|p| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt())
            .min_by(f64::total_cmp)
    }
}

/// Candidate users per base station used to pick one active user per cell.
pub const CANDIDATES_PER_CELL: f64 = 20.0;

/// SINR sampler over full Poisson–Voronoi geometry.
///
/// The tagged base station sits at the origin and its user at `(r, 0)`; the
/// other stations form a PPP conditioned on leaving the disc of radius `r`
/// around the user empty. Each other cell is active in the band with
/// probability `λ_u/λ_b` and then serves a user drawn uniformly from its
/// Voronoi cell. Points inside `inner_radius` and in the annulus beyond it come
/// from separate streams, so enlarging the window only adds points.
#[derive(Debug, Clone)]
pub struct VoronoiSampler {
    pub r_km: f64,
    pub r_sim: f64,
    pub inner_radius: f64,
    activity: f64,
    far_field: f64,
    cfg: ValidatedConfig,
}

struct Station {
    pos: [f64; 2],
    active: bool,
    gain: f64,
}

impl VoronoiSampler {
    pub fn new(r_km: f64, cfg: &ValidatedConfig) -> Result<Self, SimError> {
        Self::with_radius(r_km, cfg, default_sim_radius(cfg.network.lambda_b))
    }

    pub fn with_radius(r_km: f64, cfg: &ValidatedConfig, r_sim: f64) -> Result<Self, SimError> {
        let min_radius = default_sim_radius(cfg.network.lambda_b);
        if r_sim < min_radius * (1.0 - 1e-12) {
            return Err(SimError::Invalid("simulation radius below ten cell radii"));
        }
        if !(r_km > 0.0 && r_km < 0.5 * r_sim) {
            return Err(SimError::Invalid("target distance must be inside the window"));
        }
        let ell = mean_power(cfg, cfg.network.lambda_b)?;
        Ok(VoronoiSampler {
            r_km,
            r_sim,
            inner_radius: min_radius,
            activity: (cfg.network.lambda_u / cfg.network.lambda_b).min(1.0),
            far_field: far_field_mean(cfg, r_sim, ell),
            cfg: *cfg,
        })
    }

    fn stations<R: Rng + ?Sized>(&self, r_in: f64, r_out: f64, rng: &mut R, out: &mut Vec<Station>) {
        let user = [self.r_km, 0.0];
        let n = poisson(self.cfg.network.lambda_b * PI * (r_out * r_out - r_in * r_in), rng);
        for _ in 0..n {
            let pos = uniform_in_disc(r_in, r_out, rng);
            let active = rng.random::<f64>() < self.activity;
            let gain = exp1(rng);
            let d2 = (pos[0] - user[0]).powi(2) + pos[1].powi(2);
            if d2 >= self.r_km * self.r_km {
                out.push(Station { pos, active, gain });
            }
        }
    }

    fn candidates<R: Rng + ?Sized>(&self, r_in: f64, r_out: f64, rng: &mut R, out: &mut Vec<([f64; 2], f64)>) {
        let intensity = CANDIDATES_PER_CELL * self.cfg.network.lambda_b;
        let n = poisson(intensity * PI * (r_out * r_out - r_in * r_in), rng);
        for _ in 0..n {
            let pos = uniform_in_disc(r_in, r_out, rng);
            out.push((pos, rng.random::<f64>()));
        }
    }

    /// One SINR realisation; `inner` drives the core window, `outer` the annulus.
    pub fn sample<R: Rng + ?Sized>(&self, inner: &mut R, outer: &mut R) -> f64 {
        let alpha = self.cfg.network.alpha;
        let signal = exp1(inner) * tx_power_law(self.r_km, &self.cfg) * self.r_km.powf(-alpha);
        let core = self.inner_radius.min(self.r_sim);
        let mut stations = vec![Station {
            pos: [0.0, 0.0],
            active: false,
            gain: 0.0,
        }];
        self.stations(0.0, core, inner, &mut stations);
        let mut cands = Vec::new();
        self.candidates(0.0, core, inner, &mut cands);
        if self.r_sim > core {
            self.stations(core, self.r_sim, outer, &mut stations);
            self.candidates(core, self.r_sim, outer, &mut cands);
        }

        let pts: Vec<[f64; 2]> = stations.iter().map(|s| s.pos).collect();
        let grid = NearestGrid::new(&pts, self.r_sim, 1.0 / self.cfg.network.lambda_b.sqrt());
        // the candidate with the smallest key in each cell becomes its active user
        let mut chosen: Vec<Option<([f64; 2], f64)>> = vec![None; stations.len()];
        for &(c, key) in &cands {
            let Some((j, _)) = grid.nearest(&pts, &c) else { continue };
            if j == 0 || !stations[j].active {
                continue;
            }
            if chosen[j].is_none_or(|(_, k)| key < k) {
                chosen[j] = Some((c, key));
            }
        }
        let mut interference = self.far_field;
        for (st, pick) in stations.iter().zip(&chosen) {
            if let Some((c, _)) = pick {
                let own = ((c[0] - st.pos[0]).powi(2) + (c[1] - st.pos[1]).powi(2)).sqrt();
                let d2 = c[0] * c[0] + c[1] * c[1];
                interference += st.gain * tx_power_law(own, &self.cfg) * d2.powf(-0.5 * alpha);
            }
        }
        signal / (self.cfg.noise_power_watt() + interference)
    }

    /// Coverage estimate at threshold `gamma` over `n` realisations.
    pub fn coverage(&self, gamma: f64, n: u64, seed: u64) -> Result<SimEstimate, SimError> {
        if n < 2 {
            return Err(SimError::Invalid("need at least two samples"));
        }
        let parts = chunked(n, seed, |rng, count| {
            let mut m = Moments::default();
            for _ in 0..count {
                // a fresh pair of streams per realisation keeps windows nested
                let base: u64 = rng.random();
                let mut a = substream(base, 0);
                let mut b = substream(base, 1);
                m.push(if self.sample(&mut a, &mut b) >= gamma { 1.0 } else { 0.0 });
            }
            m
        });
        let mut total = Moments::default();
        for p in &parts {
            total.merge(p);
        }
        Ok(SimEstimate::from_moments(&total, seed))
    }
}

/// One full-geometry SINR draw at distance `r_target`.
pub fn coverage_sample_full_voronoi<R: Rng + ?Sized>(
    r_target: f64,
    cfg: &ValidatedConfig,
    rng: &mut R,
) -> Result<f64, SimError> {
    let sampler = VoronoiSampler::new(r_target, cfg)?;
    let base: u64 = rng.random();
    Ok(sampler.sample(&mut substream(base, 0), &mut substream(base, 1)))
}

/// Kolmogorov–Smirnov distance between sorted samples and a CDF that may have
/// an atom at the smallest sample value but is otherwise continuous.
pub fn ks_distance<F: Fn(f64) -> f64>(sorted: &[f64], cdf: F) -> f64 {
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == v {
            j += 1;
        }
        let f = cdf(v);
        let left = if i == 0 {
            0.0
        } else {
            cdf(v - v.abs() * 1e-15 - f64::MIN_POSITIVE).min(f)
        };
        d = d.max((j as f64 / n - f).abs()).max((i as f64 / n - left).abs());
        i = j;
    }
    d
}

/// Independent replications used by the queue simulator.
pub const DES_REPLICATIONS: u64 = 8;

/// Discarded leading frames per replication, as a fraction of its recorded frames.
pub const DES_WARMUP_FRACTION: f64 = 0.1;

/// Lindley recursion `W ← max(0, W + D − A)` after a warm-up, feeding each
/// recorded wait to `visit`.
fn lindley<R: Rng + ?Sized, V: FnMut(f64)>(lambda: f64, service: f64, n_record: u64, rng: &mut R, mut visit: V) {
    if lambda == 0.0 {
        (0..n_record).for_each(|_| visit(0.0));
        return;
    }
    let warmup = (n_record as f64 * DES_WARMUP_FRACTION).ceil() as u64;
    let mut w: f64 = 0.0;
    for k in 0..warmup + n_record {
        if k >= warmup {
            visit(w);
        }
        let gap = exp1(rng) / lambda;
        w = (w + service - gap).max(0.0);
    }
}

fn replication_sizes(n_frames: u64) -> Vec<(u64, u64)> {
    let base = n_frames / DES_REPLICATIONS;
    let extra = n_frames % DES_REPLICATIONS;
    (0..DES_REPLICATIONS)
        .map(|i| (i, base + u64::from(i < extra)))
        .collect()
}

/// Empirical waiting times from [`mdi_des`].
#[derive(Debug, Clone, PartialEq)]
pub struct DesResult {
    /// Recorded waits in ascending order.
    pub waits: Vec<f64>,
    pub zero_fraction: f64,
    pub mean_wait: SimEstimate,
}

impl DesResult {
    /// Empirical `P(W ≤ t)`.
    pub fn cdf(&self, t: f64) -> f64 {
        self.waits.partition_point(|&w| w <= t) as f64 / self.waits.len() as f64
    }

    pub fn ks_distance<F: Fn(f64) -> f64>(&self, cdf: F) -> f64 {
        ks_distance(&self.waits, cdf)
    }
}

fn check_des(lambda: f64, service: f64, n_frames: u64) -> Result<(), SimError> {
    if !(lambda >= 0.0 && service > 0.0 && lambda * service < 1.0) {
        return Err(SimError::Invalid("queue simulation needs λ·D < 1"));
    }
    if n_frames < DES_REPLICATIONS * 2 {
        return Err(SimError::Invalid("too few frames"));
    }
    Ok(())
}

/// Simulates an FCFS M/D/1 queue and returns `n_frames` equilibrium waits,
/// pooled from [`DES_REPLICATIONS`] independent runs that each start empty and
/// discard a warm-up.
pub fn mdi_des(lambda_fps: f64, service_s: f64, n_frames: u64, seed: u64) -> Result<DesResult, SimError> {
    check_des(lambda_fps, service_s, n_frames)?;
    let parts = crate::ordered_map(&replication_sizes(n_frames), |&(i, count)| {
        let mut rng = substream(seed, i);
        let mut waits = Vec::with_capacity(count as usize);
        let mut m = Moments::default();
        lindley(lambda_fps, service_s, count, &mut rng, |w| {
            waits.push(w);
            m.push(w);
        });
        (waits, m)
    });
    let mut waits = Vec::with_capacity(n_frames as usize);
    let mut mean = Moments::default();
    for (w, m) in parts {
        waits.extend_from_slice(&w);
        mean.merge(&m);
    }
    waits.sort_unstable_by(f64::total_cmp);
    let zeros = waits.partition_point(|&w| w <= 0.0);
    Ok(DesResult {
        zero_fraction: zeros as f64 / waits.len() as f64,
        waits,
        mean_wait: SimEstimate::from_moments(&mean, seed),
    })
}

/// Estimated `P(W ≤ t)` for each threshold without storing the waits, plus the
/// spread of the per-replication estimates.
pub fn des_threshold_hits(
    lambda_fps: f64,
    service_s: f64,
    thresholds: &[f64],
    n_frames: u64,
    seed: u64,
) -> Result<Vec<ThresholdEstimate>, SimError> {
    check_des(lambda_fps, service_s, n_frames)?;
    let parts = crate::ordered_map(&replication_sizes(n_frames), |&(i, count)| {
        let mut rng = substream(seed, i);
        let mut ms = vec![Moments::default(); thresholds.len()];
        lindley(lambda_fps, service_s, count, &mut rng, |w| {
            for (m, &t) in ms.iter_mut().zip(thresholds) {
                m.push(if w <= t { 1.0 } else { 0.0 });
            }
        });
        ms
    });
    Ok((0..thresholds.len())
        .map(|k| {
            let mut pooled = Moments::default();
            let mut across = Moments::default();
            for rep in &parts {
                pooled.merge(&rep[k]);
                across.push(rep[k].mean);
            }
            ThresholdEstimate {
                estimate: SimEstimate::from_moments(&pooled, seed),
                replication_std_error: (across.variance() / across.n as f64).sqrt(),
            }
        })
        .collect())
}

/// A pooled indicator estimate and the standard error implied by the scatter
/// of independent replications, which accounts for serial correlation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdEstimate {
    pub estimate: SimEstimate,
    pub replication_std_error: f64,
}

/// Result of one block-fading transmission.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceSample {
    pub seconds: f64,
    pub blocks: u64,
    /// `false` when `max_blocks` was reached before the payload was delivered.
    pub completed: bool,
}

/// Transmission time when the channel stays fixed over coherence blocks of
/// `T_coh·B_coh` channel uses and changes independently between them.
pub fn finite_coherence_uplink<R: Rng + ?Sized>(
    r_km: f64,
    cfg: &ValidatedConfig,
    max_blocks: u64,
    rng: &mut R,
) -> Result<CoherenceSample, SimError> {
    if max_blocks == 0 {
        return Err(SimError::Invalid("at least one coherence block is needed"));
    }
    let sampler = LinkSampler::new(r_km, cfg)?;
    Ok(sampler.coherence_uplink(
        cfg.image.payload_bits(),
        cfg.radio.coherence_interval(),
        cfg.radio.bandwidth_hz,
        max_blocks,
        rng,
    ))
}

/// Fraction of frames from distance `r_km` served within the deadline, using
/// the deterministic uplink time, simulated queueing and fixed processing time.
pub fn end_to_end_success(
    cfg: &ValidatedConfig,
    r_km: f64,
    n_frames: u64,
    seed: u64,
) -> Result<ThresholdEstimate, SimError> {
    let budget = latency_budget(r_km, cfg)?;
    if budget < 0.0 {
        return Ok(ThresholdEstimate {
            estimate: SimEstimate {
                mean: 0.0,
                half_width_95: 0.0,
                n_samples: n_frames,
                seed,
            },
            replication_std_error: 0.0,
        });
    }
    let service = detection::service_time(cfg.image.side_px, &cfg.detection);
    let lambda = cfg.server.aggregate_lambda;
    if lambda * service > cfg.server.rho_max * (1.0 + 1e-12) {
        return Err(SimError::Invalid("offered load exceeds the admissible maximum"));
    }
    Ok(des_threshold_hits(lambda, service, &[budget], n_frames, seed)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{validate, SystemConfig};
    use crate::queue::build_queue;
    use crate::radio::DistancePdf;

    fn base() -> ValidatedConfig {
        validate(SystemConfig::reference()).unwrap()
    }

    #[test]
    fn moments_merge_matches_sequential() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.1).collect();
        let mut all = Moments::default();
        xs.iter().for_each(|&x| all.push(x));
        let mut a = Moments::default();
        let mut b = Moments::default();
        xs[..300].iter().for_each(|&x| a.push(x));
        xs[300..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        assert_eq!(a.n, all.n);
        assert!((a.mean - all.mean).abs() < 1e-12);
        assert!((a.variance() / all.variance() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noise_only_mean_sinr() {
        let cfg = base();
        let s = LinkSampler::new(0.5, &cfg).unwrap().without_interference();
        let mut m = Moments::default();
        let mut rng = substream(1, 0);
        for _ in 0..200_000 {
            m.push(s.sample(&mut rng));
        }
        let est = SimEstimate::from_moments(&m, 1);
        let expected = tx_power_law(0.5, &cfg) * 0.5f64.powf(-3.7) / cfg.noise_power_watt();
        assert!(est.agrees_with(expected, 3.0), "{est:?} vs {expected}");
    }

    #[test]
    fn sinr_is_non_negative() {
        let cfg = base();
        let mut rng = substream(2, 0);
        let s = LinkSampler::new(1.0, &cfg).unwrap();
        assert!((0..10_000).all(|_| s.sample(&mut rng) >= 0.0));
        assert!(sinr_sample_model_faithful(1.0, &cfg, &mut rng).unwrap() >= 0.0);
    }

    #[test]
    fn estimates_are_reproducible() {
        let cfg = base();
        let a = link_estimate(0.7, &[1.0], &cfg, 40_000, 9).unwrap();
        let b = link_estimate(0.7, &[1.0], &cfg, 40_000, 9).unwrap();
        assert_eq!(a, b);
        let c = link_estimate(0.7, &[1.0], &cfg, 40_000, 10).unwrap();
        assert_ne!(a.coverage[0].1.mean, c.coverage[0].1.mean);
    }

    #[test]
    fn nearest_grid_matches_brute_force() {
        let mut rng = substream(3, 0);
        let net = NetworkRealization::sample(0.25, 0.25, 12.0, &mut rng);
        for (u, &j) in net.user_points.iter().zip(&net.associations) {
            let d = net.nearest_bs_distance(*u).unwrap();
            let p = net.bs_points[j];
            let dj = ((p[0] - u[0]).powi(2) + (p[1] - u[1]).powi(2)).sqrt();
            assert!((d - dj).abs() < 1e-12);
        }
    }

    #[test]
    fn point_counts_are_poisson() {
        let r_sim = 8.0;
        let mut m = Moments::default();
        for i in 0..1000 {
            let net = NetworkRealization::sample(0.25, 0.1, r_sim, &mut substream(4, i));
            m.push(net.bs_points.len() as f64);
        }
        let expected = 0.25 * PI * r_sim * r_sim;
        let est = SimEstimate::from_moments(&m, 4);
        assert!(est.agrees_with(expected, 3.0));
        assert!((m.variance() / expected - 1.0).abs() < 0.15);
    }

    #[test]
    fn nearest_distance_is_rayleigh() {
        let dist = DistancePdf::new(0.25);
        let mut d: Vec<f64> = (0..2000)
            .map(|i| {
                let net = NetworkRealization::sample(0.25, 0.0, default_sim_radius(0.25), &mut substream(5, i));
                net.nearest_bs_distance([0.0, 0.0]).unwrap()
            })
            .collect();
        d.sort_by(f64::total_cmp);
        let ks = ks_distance(&d, |r| dist.cdf(r));
        assert!(ks < 1.63 / (d.len() as f64).sqrt(), "{ks}");
    }

    #[test]
    fn voronoi_has_no_intra_cell_interferer() {
        // with one base station per cell and the tagged cell excluded, a zero
        // activity network leaves only noise and the far-field mean
        let cfg = base().with(|c| c.network.lambda_u = 1e-9).unwrap();
        let s = VoronoiSampler::new(0.5, &cfg).unwrap();
        let mut a = substream(6, 0);
        let mut b = substream(6, 1);
        let sinr = s.sample(&mut a, &mut b);
        let noise_only = tx_power_law(0.5, &cfg) * 0.5f64.powf(-3.7) / (cfg.noise_power_watt() + s.far_field);
        // only the signal fading remains
        assert!(sinr > 0.0 && sinr / noise_only < 40.0);
    }

    #[test]
    fn ks_of_exact_samples_is_small() {
        let n = 10_000;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        assert!(ks_distance(&xs, |x| x.clamp(0.0, 1.0)) <= 0.5 / n as f64 + 1e-12);
        // an atom at zero
        let mut ys = vec![0.0; 300];
        ys.extend((0..700).map(|i| (i as f64 + 0.5) / 700.0));
        let ks = ks_distance(&ys, |x| if x < 0.0 { 0.0 } else { 0.3 + 0.7 * x.min(1.0) });
        assert!(ks < 1e-3, "{ks}");
    }

    #[test]
    fn des_light_traffic() {
        let r = mdi_des(0.1, 0.01, 200_000, 7).unwrap();
        assert!(r.zero_fraction >= 0.998);
    }

    #[test]
    fn des_idle_fraction_and_cdf() {
        let (lambda, d) = (50.0, 0.01);
        let r = mdi_des(lambda, d, 1_000_000, 8).unwrap();
        assert!((r.zero_fraction - 0.5).abs() < 0.005);
        let q = build_queue(lambda, d, 0.99).unwrap();
        assert!(r.ks_distance(|t| q.waiting_cdf(t)) < 0.01);
        assert!(r.mean_wait.mean / q.mean_wait() - 1.0 < 0.03);
    }

    #[test]
    fn des_is_deterministic() {
        let a = mdi_des(80.0, 0.01, 100_000, 11).unwrap();
        let b = mdi_des(80.0, 0.01, 100_000, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn deterministic_single_block() {
        let cfg = base();
        let s = LinkSampler::new(0.5, &cfg)
            .unwrap()
            .without_fading()
            .without_interference();
        let snr = tx_power_law(0.5, &cfg) * 0.5f64.powf(-3.7) / cfg.noise_power_watt();
        let payload = cfg.image.payload_bits();
        let symbols = payload / (1.0 + snr).log2();
        let out = s.coherence_uplink(payload, symbols, cfg.radio.bandwidth_hz, 10, &mut substream(12, 0));
        assert_eq!(out.blocks, 1);
        let exact = payload / (cfg.radio.bandwidth_hz * (1.0 + snr).log2());
        assert!((out.seconds / exact - 1.0).abs() < 1e-12);
    }

    #[test]
    fn end_to_end_trivial_cases() {
        let cfg = base();
        let far = end_to_end_success(&cfg, 6.0, 10_000, 1).unwrap();
        assert_eq!(far.estimate.mean, 0.0);
        assert_eq!(far.estimate.half_width_95, 0.0);
        let idle = cfg.with(|c| c.server.aggregate_lambda = 1e-6).unwrap();
        let near = end_to_end_success(&idle, 0.1, 10_000, 1).unwrap();
        assert_eq!(near.estimate.mean, 1.0);
    }
}
