//! Shared test oracles, independent of the solver code paths they check.
//!
//! Different test crates use different subsets of these helpers.
#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use rand::SeedableRng;

pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Random interior simplex vector with coordinates bounded away from zero.
pub fn random_interior_measure<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| 0.2 + rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

fn entropic_objective(plan: &[f64], costs: &[f64], lambda: f64) -> f64 {
    let mut obj = 0.0;
    for (&t, &c) in plan.iter().zip(costs) {
        if t < -1e-12 {
            return f64::INFINITY;
        }
        if t > 0.0 {
            obj += t * c + lambda * t * t.ln();
        }
    }
    obj
}

/// Brute-force minimum of `<T,C> + λ Σ t ln t` over the transport polytope
/// for N = 2: one free entry, located by a shrinking grid search.
fn brute_force_2(a: &[f64], b: &[f64], cost: &Array2<f64>, lambda: f64) -> f64 {
    let costs = [cost[[0, 0]], cost[[0, 1]], cost[[1, 0]], cost[[1, 1]]];
    let eval = |t: f64| {
        let plan = [t, a[0] - t, b[0] - t, 1.0 - a[0] - b[0] + t];
        entropic_objective(&plan, &costs, lambda)
    };
    let mut lo = (a[0] + b[0] - 1.0).max(0.0);
    let mut hi = a[0].min(b[0]);
    let mut best_t = 0.5 * (lo + hi);
    let mut best = eval(best_t);
    for _ in 0..60 {
        let step = (hi - lo) / 200.0;
        if step <= 0.0 {
            break;
        }
        for k in 0..=200 {
            let t = lo + step * k as f64;
            let v = eval(t);
            if v < best {
                best = v;
                best_t = t;
            }
        }
        let new_lo = (best_t - 2.0 * step).max((a[0] + b[0] - 1.0).max(0.0));
        let new_hi = (best_t + 2.0 * step).min(a[0].min(b[0]));
        lo = new_lo;
        hi = new_hi;
        if hi - lo < 1e-14 {
            break;
        }
    }
    best
}

/// Brute-force minimum for N = 3: four free entries, shrinking grid search
/// over the feasible box.
fn brute_force_3(a: &[f64], b: &[f64], cost: &Array2<f64>, lambda: f64) -> f64 {
    let costs: Vec<f64> = (0..3)
        .flat_map(|i| (0..3).map(move |j| cost[[i, j]]))
        .collect();
    let eval = |x: &[f64; 4]| {
        let (t00, t01, t10, t11) = (x[0], x[1], x[2], x[3]);
        let plan = [
            t00,
            t01,
            a[0] - t00 - t01,
            t10,
            t11,
            a[1] - t10 - t11,
            b[0] - t00 - t10,
            b[1] - t01 - t11,
            1.0 - a[0] - a[1] - b[0] - b[1] + t00 + t01 + t10 + t11,
        ];
        entropic_objective(&plan, &costs, lambda)
    };
    let bounds = [
        a[0].min(b[0]),
        a[0].min(b[1]),
        a[1].min(b[0]),
        a[1].min(b[1]),
    ];
    let mut center = [
        bounds[0] / 2.0,
        bounds[1] / 2.0,
        bounds[2] / 2.0,
        bounds[3] / 2.0,
    ];
    let mut width = bounds;
    let mut best = f64::INFINITY;
    let mut best_x = center;
    let k = 8usize;
    for _ in 0..40 {
        let mut improved = false;
        let mut x = [0.0; 4];
        for i0 in 0..=k {
            x[0] = (center[0] - width[0] / 2.0 + width[0] * i0 as f64 / k as f64)
                .clamp(0.0, bounds[0]);
            for i1 in 0..=k {
                x[1] = (center[1] - width[1] / 2.0 + width[1] * i1 as f64 / k as f64)
                    .clamp(0.0, bounds[1]);
                for i2 in 0..=k {
                    x[2] = (center[2] - width[2] / 2.0 + width[2] * i2 as f64 / k as f64)
                        .clamp(0.0, bounds[2]);
                    for i3 in 0..=k {
                        x[3] = (center[3] - width[3] / 2.0 + width[3] * i3 as f64 / k as f64)
                            .clamp(0.0, bounds[3]);
                        let v = eval(&x);
                        if v < best {
                            best = v;
                            best_x = x;
                            improved = true;
                        }
                    }
                }
            }
        }
        center = best_x;
        for w in &mut width {
            *w *= 3.0 / k as f64;
        }
        if !improved && width[0] < 1e-12 {
            break;
        }
    }
    best
}

/// Independent primal minimizer for N in {2, 3}.
pub fn brute_force_divergence(a: &[f64], b: &[f64], cost: &Array2<f64>, lambda: f64) -> f64 {
    match a.len() {
        2 => brute_force_2(a, b, cost, lambda),
        3 => brute_force_3(a, b, cost, lambda),
        n => panic!("brute force oracle supports N in {{2, 3}}, got {n}"),
    }
}

/// Standard normal CDF via the Abramowitz-Stegun erf approximation
/// (absolute error below 1.5e-7, ample for KS tolerances here).
pub fn normal_cdf(x: f64) -> f64 {
    let z = x / std::f64::consts::SQRT_2;
    let sign = if z < 0.0 { -1.0 } else { 1.0 };
    let z = z.abs();
    let t = 1.0 / (1.0 + 0.327_591_1 * z);
    let poly = t
        * (0.254_829_592
            + t * (-0.284_496_736
                + t * (1.421_413_741 + t * (-1.453_152_027 + t * 1.061_405_429))));
    let erf = 1.0 - poly * (-z * z).exp();
    0.5 * (1.0 + sign * erf)
}

/// Kolmogorov-Smirnov distance between a sample and the standard normal.
pub fn ks_to_standard_normal(samples: &[f64]) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let cdf = normal_cdf(x);
        d = d.max(((i + 1) as f64 / n - cdf).abs());
        d = d.max((i as f64 / n - cdf).abs());
    }
    d
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> f64 {
    let mut xs = xs.to_vec();
    let mut ys = ys.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (nx, ny) = (xs.len() as f64, ys.len() as f64);
    let mut i = 0;
    let mut j = 0;
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / nx - j as f64 / ny).abs());
    }
    d
}

/// Eigenvalues of a symmetric matrix by the cyclic Jacobi method.
pub fn symmetric_eigenvalues(m: &Array2<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    for _ in 0..200 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[[p, q]] * a[[p, q]];
            }
        }
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[[i, i]]).collect()
}

/// Sample variance (n - 1 denominator).
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
