//! Quadrature, root bracketing and scalar maximisation kernels.
//!
//! Finite intervals use globally adaptive 21-point Gauss–Kronrod. Semi-infinite
//! domains are cut into geometrically growing segments until either a
//! caller-supplied tail bound or the last segment's contribution falls below
//! `tail_cutoff`.

use std::collections::BinaryHeap;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("quadrature did not converge: estimate {estimate:e}, error {error:e} after {subdivisions} subdivisions")]
    Convergence {
        estimate: f64,
        error: f64,
        subdivisions: usize,
    },
    #[error("integrand returned a non-finite value at x = {x}")]
    NonFinite { x: f64 },
    #[error("invalid quadrature specification: {0}")]
    InvalidSpec(&'static str),
}

/// Tolerances for one quadrature call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
    /// Mass threshold below which a semi-infinite tail is discarded.
    pub tail_cutoff: f64,
}

impl QuadratureSpec {
    /// Defaults for integrals nested inside another quadrature.
    pub const INNER: QuadratureSpec = QuadratureSpec {
        abs_tol: 1e-8,
        rel_tol: 1e-7,
        max_subdivisions: 200,
        tail_cutoff: 1e-10,
    };

    /// Defaults for outermost integrals.
    pub const OUTER: QuadratureSpec = QuadratureSpec {
        abs_tol: 1e-6,
        rel_tol: 1e-6,
        max_subdivisions: 200,
        tail_cutoff: 1e-8,
    };

    pub fn new(abs_tol: f64, rel_tol: f64, max_subdivisions: usize, tail_cutoff: f64) -> Result<Self, NumericsError> {
        let spec = QuadratureSpec {
            abs_tol,
            rel_tol,
            max_subdivisions,
            tail_cutoff,
        };
        spec.check()?;
        Ok(spec)
    }

    fn check(&self) -> Result<(), NumericsError> {
        if self.abs_tol.is_nan() || self.abs_tol <= 0.0 {
            return Err(NumericsError::InvalidSpec("abs_tol must be positive"));
        }
        if self.rel_tol.is_nan() || self.rel_tol <= 0.0 {
            return Err(NumericsError::InvalidSpec("rel_tol must be positive"));
        }
        if self.max_subdivisions < 1 {
            return Err(NumericsError::InvalidSpec("max_subdivisions must be at least 1"));
        }
        if !(self.tail_cutoff > 0.0 && self.tail_cutoff < self.abs_tol) {
            return Err(NumericsError::InvalidSpec("tail_cutoff must lie in (0, abs_tol)"));
        }
        Ok(())
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self::OUTER
    }
}

/// Value and error estimate of a quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

const XGK: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_22,
    0.0,
];

const WG: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_35,
    0.295_524_224_714_752_87,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874,
    0.032_558_162_307_964_725,
    0.054_755_896_574_351_995,
    0.075_039_674_810_919_96,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_84,
    0.134_709_217_311_473_34,
    0.142_775_938_577_060_09,
    0.147_739_104_901_338_49,
    0.149_445_554_002_916_9,
];

/// One 21-point Gauss–Kronrod panel with the QUADPACK error heuristic.
fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<Estimate, NumericsError> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let eval = |x: f64| {
        let y = f(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(NumericsError::NonFinite { x })
        }
    };

    let fc = eval(center)?;
    let mut kronrod = fc * WGK[10];
    let mut gauss = 0.0;
    let mut resabs = kronrod.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = eval(center - dx)?;
        let f2 = eval(center + dx)?;
        fv1[j] = f1;
        fv2[j] = f2;
        kronrod += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kronrod;
    let mut resasc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        resasc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let result = kronrod * half;
    let resabs = resabs * half.abs();
    let resasc = resasc * half.abs();
    let mut err = ((kronrod - gauss) * half).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    Ok(Estimate {
        value: result,
        error: err,
    })
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    est: Estimate,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.est.error == other.est.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.est.error.total_cmp(&other.est.error)
    }
}

/// Adaptive quadrature of `f` over the finite interval `[a, b]`.
///
/// Stops once the summed error estimate is below `max(abs_tol, rel_tol·|I|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<Estimate, NumericsError> {
    integrate_with_breaks(f, &[a, b], spec)
}

/// Like [`integrate`], seeding the subdivision with known breakpoints
/// (kinks or discontinuities). `points` must be sorted and span the domain.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    points: &[f64],
    spec: &QuadratureSpec,
) -> Result<Estimate, NumericsError> {
    spec.check()?;
    if points.len() < 2 {
        return Ok(Estimate { value: 0.0, error: 0.0 });
    }
    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut total_err = 0.0;
    for w in points.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let est = gk21(&f, w[0], w[1])?;
        total += est.value;
        total_err += est.error;
        heap.push(Panel { a: w[0], b: w[1], est });
    }
    let mut subdivisions = heap.len();
    while total_err > spec.abs_tol.max(spec.rel_tol * total.abs()) {
        if subdivisions >= spec.max_subdivisions {
            return Err(NumericsError::Convergence {
                estimate: total,
                error: total_err,
                subdivisions,
            });
        }
        let worst = heap.pop().expect("non-empty panel heap");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval exhausted at machine resolution
            return Err(NumericsError::Convergence {
                estimate: total,
                error: total_err,
                subdivisions,
            });
        }
        let left = gk21(&f, worst.a, mid)?;
        let right = gk21(&f, mid, worst.b)?;
        total += left.value + right.value - worst.est.value;
        total_err += left.error + right.error - worst.est.error;
        heap.push(Panel {
            a: worst.a,
            b: mid,
            est: left,
        });
        heap.push(Panel {
            a: mid,
            b: worst.b,
            est: right,
        });
        subdivisions += 1;
    }
    // re-sum to shed accumulated cancellation from the running updates
    let mut value = 0.0;
    let mut error = 0.0;
    for p in heap.iter() {
        value += p.est.value;
        error += p.est.error;
    }
    Ok(Estimate { value, error })
}

/// Integral of `f` over `[lower, ∞)` with the default segment scale of 1.
pub fn integrate_semi_infinite<F: Fn(f64) -> f64>(
    f: F,
    lower: f64,
    spec: &QuadratureSpec,
) -> Result<f64, NumericsError> {
    integrate_semi_infinite_scaled(f, lower, 1.0, spec, None::<fn(f64) -> f64>)
}

/// Integral of `f` over `[lower, ∞)`.
///
/// The domain is cut into segments of width `scale, 2·scale, 4·scale, …`.
/// With a tail bound `tail(x) ≥ |∫_x^∞ f|`, integration stops as soon as the
/// bound at the current cut drops below `tail_cutoff`; without one it stops
/// after two consecutive segments each contribute less than `tail_cutoff`.
pub fn integrate_semi_infinite_scaled<F, T>(
    f: F,
    lower: f64,
    scale: f64,
    spec: &QuadratureSpec,
    tail: Option<T>,
) -> Result<f64, NumericsError>
where
    F: Fn(f64) -> f64,
    T: Fn(f64) -> f64,
{
    const MAX_SEGMENTS: usize = 200;
    spec.check()?;
    let mut total = 0.0;
    let mut a = lower;
    let mut width = if scale > 0.0 { scale } else { 1.0 };
    let mut quiet = 0;
    let mut subdivisions = 0;
    for k in 0..MAX_SEGMENTS {
        if let Some(bound) = &tail {
            if bound(a) < spec.tail_cutoff {
                return Ok(total);
            }
        }
        let b = a + width;
        let seg_spec = QuadratureSpec {
            abs_tol: spec.abs_tol * 3.0 / (std::f64::consts::PI.powi(2) * ((k + 1) * (k + 1)) as f64),
            tail_cutoff: f64::MIN_POSITIVE,
            ..*spec
        };
        let seg = integrate(&f, a, b, &seg_spec)?;
        subdivisions += 1;
        total += seg.value;
        if tail.is_none() {
            if seg.value.abs() < spec.tail_cutoff {
                quiet += 1;
                if quiet >= 2 {
                    return Ok(total);
                }
            } else {
                quiet = 0;
            }
        }
        a = b;
        width *= 2.0;
    }
    Err(NumericsError::Convergence {
        estimate: total,
        error: f64::INFINITY,
        subdivisions,
    })
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration on the
/// three-term recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Finds `x` in `[lo, hi]` where `pred` flips from true to false.
///
/// Requires `pred(lo)` and `!pred(hi)`; returns the last point known to satisfy
/// the predicate once the bracket is narrower than `x_tol`.
pub fn bisect_predicate<P: FnMut(f64) -> bool>(mut pred: P, mut lo: f64, mut hi: f64, x_tol: f64) -> f64 {
    while hi - lo > x_tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

const SCAN_POINTS: usize = 64;

/// Maximises `g` on `[lo, hi]`.
///
/// A uniform scan over `SCAN_POINTS + 1` points picks the best cell, which is
/// then refined by golden-section search. Exactly flat objectives return the
/// midpoint of the best plateau on the scan grid.
pub fn maximize_scalar<G: FnMut(f64) -> f64>(mut g: G, lo: f64, hi: f64, x_tol: f64) -> (f64, f64) {
    assert!(lo < hi, "maximize_scalar needs lo < hi");
    let step = (hi - lo) / SCAN_POINTS as f64;
    let xs: Vec<f64> = (0..=SCAN_POINTS)
        .map(|i| if i == SCAN_POINTS { hi } else { lo + step * i as f64 })
        .collect();
    let ys: Vec<f64> = xs.iter().map(|&x| g(x)).collect();
    let mut best = 0;
    for (i, &y) in ys.iter().enumerate() {
        if y > ys[best] {
            best = i;
        }
    }
    // walk the plateau of exactly equal values around the maximum
    let mut first = best;
    while first > 0 && ys[first - 1] == ys[best] {
        first -= 1;
    }
    let mut last = best;
    while last < SCAN_POINTS && ys[last + 1] == ys[best] {
        last += 1;
    }

    let mut a = xs[first.saturating_sub(1)];
    let mut b = xs[(last + 1).min(SCAN_POINTS)];
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut gc = g(c);
    let mut gd = g(d);
    while (b - a).abs() > x_tol {
        if gc >= gd {
            b = d;
            d = c;
            gd = gc;
            c = b - inv_phi * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + inv_phi * (b - a);
            gd = g(d);
        }
    }
    if last > first && gc.max(gd) <= ys[best] {
        let mid = 0.5 * (xs[first] + xs[last]);
        let y = g(mid);
        return if y >= ys[best] { (mid, y) } else { (xs[best], ys[best]) };
    }
    let mut candidates = [(xs[best], ys[best]), (c, gc), (d, gd)];
    candidates.sort_by(|p, q| q.1.total_cmp(&p.1));
    candidates[0]
}
