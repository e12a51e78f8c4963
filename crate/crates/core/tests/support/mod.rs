//! Independent reference implementations used by the integration and
//! acceptance tests. Nothing here calls into the library's loss or training
//! code; only plain data types and the sampling stream are shared.
#![allow(dead_code)]

use adversarial_diffusion::dataset::{AgentDataset, Label, NetworkDataset, Sample};
use adversarial_diffusion::diffusion::SampleStream;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn naive_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn naive_norm(a: &[f64]) -> f64 {
    naive_dot(a, a).sqrt()
}

/// `ln(1 + e^{-m})` evaluated directly; fine for the moderate margins the
/// oracles feed it.
pub fn logistic(m: f64) -> f64 {
    if m > 30.0 {
        (-m).exp()
    } else if m < -30.0 {
        -m + m.exp()
    } else {
        (1.0 + (-m).exp()).ln()
    }
}

pub fn clean(w: &[f64], x: &[f64], y: f64) -> f64 {
    logistic(y * naive_dot(w, x))
}

/// Worst-case logistic loss over the ℓ2 ball of radius `eps`, by projected
/// normalized gradient ascent on `δ` from several starts (including 0).
pub fn pga_inner_max(w: &[f64], x: &[f64], y: f64, eps: f64, rng: &mut ChaCha8Rng) -> f64 {
    let d = x.len();
    let project = |delta: &mut [f64]| {
        let n = naive_norm(delta);
        if n > eps {
            for v in delta.iter_mut() {
                *v *= eps / n;
            }
        }
    };
    let objective = |delta: &[f64]| {
        let xp: Vec<f64> = x.iter().zip(delta).map(|(a, b)| a + b).collect();
        clean(w, &xp, y)
    };
    let mut best = objective(&vec![0.0; d]);
    for start in 0..4 {
        let mut delta: Vec<f64> = if start == 0 {
            vec![0.0; d]
        } else {
            (0..d).map(|_| rng.random_range(-1.0..1.0) * eps).collect()
        };
        project(&mut delta);
        let mut step = 0.05 * eps;
        for it in 0..400 {
            // d/dδ ln(1 + e^{-y<w, x+δ>}) = -y σ(-y<w,x+δ>) w; the positive
            // scalar does not change the normalized direction.
            let g: Vec<f64> = w.iter().map(|wi| -y * wi).collect();
            let gn = naive_norm(&g);
            if gn == 0.0 {
                break;
            }
            for (di, gi) in delta.iter_mut().zip(&g) {
                *di += step * gi / gn;
            }
            project(&mut delta);
            if it >= 200 {
                step *= 0.9;
            }
        }
        best = best.max(objective(&delta));
    }
    best
}

/// Robust loss evaluated through its definition `max_δ Q(w; x + δ, y)`
/// with the maximiser written out in full (for finite differences).
pub fn robust_closed_form(w: &[f64], x: &[f64], y: f64, eps: f64) -> f64 {
    logistic(y * naive_dot(w, x) - eps * naive_norm(w))
}

/// Central finite-difference gradient of `f` at `w`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, w: &[f64], h: f64) -> Vec<f64> {
    let mut wp = w.to_vec();
    (0..w.len())
        .map(|j| {
            let orig = wp[j];
            wp[j] = orig + h;
            let up = f(&wp);
            wp[j] = orig - h;
            let down = f(&wp);
            wp[j] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Plain single-agent SGD on the logistic loss, drawing sample indices from
/// the same per-agent stream the engine uses. Returns `w_0, ..., w_T`.
pub fn single_agent_sgd(samples: &[Sample], mu: f64, iterations: usize, seed: u64) -> Vec<Vec<f64>> {
    let d = samples[0].x.len();
    let mut stream = SampleStream::new(seed, 0);
    let mut w = vec![0.0; d];
    let mut out = vec![w.clone()];
    for _ in 0..iterations {
        let s = &samples[stream.next_index(samples.len())];
        let y = s.y.sign();
        let m = y * naive_dot(&w, &s.x);
        let sig = 1.0 / (1.0 + m.exp());
        for (wi, xi) in w.iter_mut().zip(&s.x) {
            *wi += mu * y * sig * xi;
        }
        out.push(w.clone());
    }
    out
}

/// `w_k = Σ_l a[l][k] φ_l` by triple loop, `a` row-major by `l`.
pub fn naive_combine(phi: &[Vec<f64>], a: &[f64]) -> Vec<Vec<f64>> {
    let k = phi.len();
    let d = phi[0].len();
    let mut out = vec![vec![0.0; d]; k];
    for to in 0..k {
        for from in 0..k {
            for j in 0..d {
                out[to][j] += a[from * k + to] * phi[from][j];
            }
        }
    }
    out
}

/// Magnitudes of the eigenvalues of the ring's circulant matrix with
/// weights 1/3 on self and both neighbours: `|(1 + 2 cos(2πj/K)) / 3|`.
pub fn ring_eigen_magnitudes(k: usize) -> Vec<f64> {
    (0..k)
        .map(|j| ((1.0 + 2.0 * (2.0 * std::f64::consts::PI * j as f64 / k as f64).cos()) / 3.0).abs())
        .collect()
}

/// Brute-force minimum of `f` over a square grid followed by coordinate
/// refinement; for two-dimensional problems only.
pub fn grid_minimum(f: impl Fn(&[f64]) -> f64, half_width: f64) -> (Vec<f64>, f64) {
    let mut best = (vec![0.0, 0.0], f(&[0.0, 0.0]));
    let n = 400;
    for i in 0..=n {
        for j in 0..=n {
            let w = [
                -half_width + 2.0 * half_width * i as f64 / n as f64,
                -half_width + 2.0 * half_width * j as f64 / n as f64,
            ];
            let v = f(&w);
            if v < best.1 {
                best = (w.to_vec(), v);
            }
        }
    }
    let mut h = 2.0 * half_width / n as f64;
    while h > 1e-10 {
        let mut improved = false;
        for dir in [[h, 0.0], [-h, 0.0], [0.0, h], [0.0, -h]] {
            let w = [best.0[0] + dir[0], best.0[1] + dir[1]];
            let v = f(&w);
            if v < best.1 {
                best = (w.to_vec(), v);
                improved = true;
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    best
}

pub fn sample(x: &[f64], y: f64) -> Sample {
    Sample::new(x.to_vec(), Label::from_sign(y).unwrap()).unwrap()
}

pub fn agent(samples: Vec<Sample>) -> AgentDataset {
    let n = samples.len();
    AgentDataset {
        samples,
        flipped: vec![false; n],
    }
}

/// A dataset from explicit per-agent `(x, y)` lists.
pub fn network(agents: Vec<Vec<Sample>>) -> NetworkDataset {
    let d = agents[0][0].x.len();
    NetworkDataset::new(agents.into_iter().map(agent).collect(), d).unwrap()
}

pub fn random_vector(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-scale..scale)).collect()
}

/// A random vector with norm drawn uniformly from `(lo, hi]`.
pub fn random_with_norm(rng: &mut ChaCha8Rng, d: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut v = random_vector(rng, d, 1.0);
    while naive_norm(&v) < 1e-3 {
        v = random_vector(rng, d, 1.0);
    }
    let target = lo + (hi - lo) * (1.0 - rng.random::<f64>());
    let n = naive_norm(&v);
    v.iter_mut().for_each(|x| *x *= target / n);
    v
}

/// Mean and standard error of the mean.
pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}
