//! Random-walk kernels, the continuum heat kernel, centered weight variables,
//! and the multilinear (polynomial chaos) expansion of the normalized
//! truncated partition function.
//!
//! The expansion rewrites `e^{-n*lambda} Z~` exactly as
//! `1 + sum_k sum_{time-ordered tuples} prod p(i_j - i_{j-1}, x_j - x_{j-1})
//! * zeta~_{i_j, x_j}` with `zeta~_v = e^{beta*w~_v - lambda} - 1`. It is
//! evaluated by a factorized forward recursion over (order, i, x), which is
//! mathematically identical to the tuple sum at `Theta(order * n^2)` cost;
//! the tuple-sum form survives only as a small-`n` cross-check in the tests.

use thiserror::Error;

use crate::disorder::{truncate, TailSpec};
use crate::polymer::Environment;
use crate::quad::tanh_sinh;

#[derive(Debug, Error)]
pub enum ChaosError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("full-order expansion refused: n = {n} exceeds the cost guard {max}")]
    CostGuard { n: usize, max: usize },
}

const FULL_ORDER_MAX_N: usize = 16;

/// `P(s_n = x)` for `x = -n + 2j`. Exact dyadic binomials for `n <= 64`,
/// the rolling half-sum recursion beyond.
pub fn walk_row(n: usize) -> Vec<f64> {
    if n <= 64 {
        let mut binom = vec![1u128];
        for _ in 0..n {
            let mut next = vec![1u128; binom.len() + 1];
            for j in 1..binom.len() {
                next[j] = binom[j - 1] + binom[j];
            }
            binom = next;
        }
        let scale = 2.0f64.powi(-(n as i32));
        binom.iter().map(|&c| c as f64 * scale).collect()
    } else {
        let mut row = vec![1.0f64];
        for i in 1..=n {
            let mut next = vec![0.0; i + 1];
            for (j, v) in next.iter_mut().enumerate() {
                let left = if j >= 1 { row[j - 1] } else { 0.0 };
                let right = if j < i { row[j] } else { 0.0 };
                *v = 0.5 * (left + right);
            }
            row = next;
        }
        row
    }
}

/// Simple-random-walk transition kernel `p(i, x)` for all `i <= n` on the
/// parity cone (odd-parity entries are identically zero and not stored).
#[derive(Debug, Clone)]
pub struct KernelTable {
    pub n: usize,
    flat: Vec<f64>,
}

fn kernel_offset(i: usize) -> usize {
    i * (i + 1) / 2 + i // sum_{j=0}^{i-1} (j+1) = i(i+1)/2, plus nothing: rows 0..i
}

impl KernelTable {
    pub fn new(n: usize) -> KernelTable {
        assert!(n >= 1);
        let mut flat = Vec::with_capacity((n + 1) * (n + 2) / 2);
        flat.push(1.0);
        let mut prev_off = 0usize;
        for i in 1..=n {
            let off = flat.len();
            for j in 0..=i {
                let left = if j >= 1 { flat[prev_off + j - 1] } else { 0.0 };
                let right = if j < i { flat[prev_off + j] } else { 0.0 };
                flat.push(0.5 * (left + right));
            }
            prev_off = off;
        }
        KernelTable { n, flat }
    }

    /// Row `i` (`0 <= i <= n`), entries at `x = -i + 2j`.
    pub fn row(&self, i: usize) -> &[f64] {
        let off = kernel_offset(i) - i + i * 0; // see below
        let start = i * (i + 1) / 2;
        debug_assert_eq!(off - off, 0);
        &self.flat[start..start + i + 1]
    }

    /// `P(s_i = x)`; zero off the parity cone.
    pub fn p(&self, i: usize, x: i64) -> f64 {
        if x.unsigned_abs() as usize > i || (i as i64 + x) % 2 != 0 {
            return 0.0;
        }
        self.row(i)[((x + i as i64) / 2) as usize]
    }
}

/// Standard Gaussian heat kernel `rho(t, x) = exp(-x^2/2t) / sqrt(2 pi t)`.
pub fn heat_kernel(t: f64, x: f64) -> Result<f64, ChaosError> {
    if !(t > 0.0) {
        return Err(ChaosError::Domain(format!("heat kernel needs t > 0, got {t}")));
    }
    Ok((-x * x / (2.0 * t)).exp() / (2.0 * std::f64::consts::PI * t).sqrt())
}

/// Centered multiplicative weight variables
/// `zeta_v = beta^{-1} (e^{beta*w~_v - lambda} - 1)` over the cone, with the
/// truncated cumulant `lambda = log E[e^{beta*w~}]` that makes them mean zero.
#[derive(Debug, Clone)]
pub struct ZetaField {
    pub n: usize,
    pub beta: f64,
    pub k: f64,
    pub lambda: f64,
    values: Vec<f64>,
}

impl ZetaField {
    pub fn row(&self, i: usize) -> &[f64] {
        let start = (i - 1) * (i + 2) / 2;
        &self.values[start..start + i + 1]
    }

    pub fn get(&self, i: usize, x: i64) -> f64 {
        self.row(i)[((x + i as i64) / 2) as usize]
    }
}

pub fn zeta_field(env: &Environment, beta: f64, k: f64) -> ZetaField {
    assert!(beta > 0.0 && k > 0.0);
    let lambda = env.spec.lambda_trunc(beta, k).expect("validated parameters");
    let mut values = Vec::with_capacity(env.site_count());
    for i in 1..=env.n {
        for &w in env.row(i) {
            values.push((beta * truncate(w, k) - lambda).exp_m1() / beta);
        }
    }
    ZetaField { n: env.n, beta, k, lambda, values }
}

/// `1 + sum_{m=1}^{max_order} beta^m sum_tuples prod p * zeta`, evaluated by
/// the factorized recursion. At `max_order = n` this equals
/// `e^{-n*lambda} Z~` exactly. Full-order evaluation is cost-guarded.
pub fn multilinear_sum(
    env: &Environment,
    beta: f64,
    k: f64,
    max_order: usize,
) -> Result<f64, ChaosError> {
    let kernel = KernelTable::new(env.n.max(1));
    multilinear_sum_with(&kernel, env, beta, k, max_order)
}

/// As [`multilinear_sum`] but reusing a prebuilt kernel table.
pub fn multilinear_sum_with(
    kernel: &KernelTable,
    env: &Environment,
    beta: f64,
    k: f64,
    max_order: usize,
) -> Result<f64, ChaosError> {
    assert!(beta > 0.0 && k > 0.0);
    if max_order > 2 && env.n > FULL_ORDER_MAX_N {
        return Err(ChaosError::CostGuard { n: env.n, max: FULL_ORDER_MAX_N });
    }
    if kernel.n < env.n {
        return Err(ChaosError::Domain("kernel table shorter than the environment".into()));
    }
    let n = env.n;
    let lambda = env.spec.lambda_trunc(beta, k).expect("validated parameters");
    // beta * zeta = e^{beta*w~ - lambda} - 1, row-major over the cone.
    let mut bz: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    bz.push(Vec::new());
    for i in 1..=n {
        bz.push(env.row(i).iter().map(|&w| (beta * truncate(w, k) - lambda).exp_m1()).collect());
    }

    let mut total = 1.0;
    // prev[i] holds B_{m-1}(i, .): the order-(m-1) prefix sums propagated to
    // row i by the walk kernel; B_0 is the kernel itself.
    let mut prev: Vec<Vec<f64>> = (0..=n).map(|i| kernel.row(i).to_vec()).collect();
    for _m in 1..=max_order.min(n) {
        let mut cur: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        cur.push(vec![0.0]);
        let mut order_sum = 0.0;
        for i in 1..=n {
            let mut row = vec![0.0; i + 1];
            for (j, rv) in row.iter_mut().enumerate() {
                let left = if j >= 1 { prev[i - 1][j - 1] } else { 0.0 };
                let right = if j < i { prev[i - 1][j] } else { 0.0 };
                let reach = 0.5 * (left + right);
                let g = bz[i][j] * reach;
                order_sum += g;
                let cleft = if j >= 1 { cur[i - 1][j - 1] } else { 0.0 };
                let cright = if j < i { cur[i - 1][j] } else { 0.0 };
                *rv = 0.5 * (cleft + cright) + g;
            }
            cur.push(row);
        }
        total += order_sum;
        prev = cur;
    }
    Ok(total)
}

/// First-order chaos statistic
/// `n^{-3/4} sum_{i,x} (sqrt(n) p(i,x)) zeta_{i,x}`, whose limit is the
/// centered Gaussian of the weak-disorder regime.
pub fn first_order_stat(env: &Environment, beta: f64, k: f64) -> f64 {
    assert!(beta > 0.0 && k > 0.0);
    let lambda = env.spec.lambda_trunc(beta, k).expect("validated parameters");
    let mut walk = vec![1.0f64];
    let mut acc = 0.0;
    for i in 1..=env.n {
        let mut next = vec![0.0; i + 1];
        for (j, v) in next.iter_mut().enumerate() {
            let left = if j >= 1 { walk[j - 1] } else { 0.0 };
            let right = if j < i { walk[j] } else { 0.0 };
            *v = 0.5 * (left + right);
        }
        walk = next;
        for (j, &w) in env.row(i).iter().enumerate() {
            acc += walk[j] * (beta * truncate(w, k) - lambda).exp_m1();
        }
    }
    acc / (beta * (env.n as f64).powf(0.25))
}

/// Streamed variant for replica studies: the environment rows are regenerated
/// from the seed and never materialized; the kernel table is shared.
pub fn first_order_stat_streamed(
    kernel: &KernelTable,
    spec: &TailSpec,
    n: usize,
    seed: u64,
    beta: f64,
    k: f64,
    lambda: f64,
) -> f64 {
    use rand::SeedableRng;
    assert!(kernel.n >= n && beta > 0.0 && k > 0.0);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut acc = 0.0;
    for i in 1..=n {
        let row = kernel.row(i);
        for &p in row.iter() {
            let w = spec.sample_one(&mut rng);
            acc += p * (beta * truncate(w, k) - lambda).exp_m1();
        }
    }
    acc / (beta * (n as f64).powf(0.25))
}

/// Quadrature identity behind the mean-zero property of the zeta variables:
/// `E[e^{beta*w~ - lambda}] - 1` computed from the same truncated cumulant.
pub fn zeta_mean_residual(spec: &TailSpec, beta: f64, k: f64) -> f64 {
    let lambda = spec.lambda_trunc(beta, k).expect("validated parameters");
    let em1 = spec.expect_between(f64::NEG_INFINITY, k, |x| (beta * x).exp_m1());
    (em1.ln_1p() - lambda).exp_m1()
}

/// Second moment of zeta from the truncated cumulants:
/// `beta^{-2} (e^{lambda(2 beta) - 2 lambda(beta)} - 1)`.
pub fn zeta_variance(spec: &TailSpec, beta: f64, k: f64) -> f64 {
    let l1 = spec.lambda_trunc(beta, k).expect("validated parameters");
    let l2 = spec.lambda_trunc(2.0 * beta, k).expect("validated parameters");
    (l2 - 2.0 * l1).exp_m1() / (beta * beta)
}

#[allow(dead_code)]
fn normalization_check(t: f64) -> f64 {
    // Heat kernel mass over the real line at time t (clipped Gaussian tails).
    let w = 40.0 * t.sqrt();
    tanh_sinh(|x, _, _| heat_kernel(t, x).unwrap(), -w, w, 1e-12)
}
