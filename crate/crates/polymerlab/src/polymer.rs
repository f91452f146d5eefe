//! Directed-polymer environments and exact partition functions on the
//! nearest-neighbor lattice cone.
//!
//! Sites live on `{(i, x) : 1 <= i <= n, |x| <= i, i + x even}`; row `i`
//! stores `i + 1` weights at `x = -i, -i+2, ..., i`. The partition function
//! `Z = 2^{-n} sum_paths exp(beta * H)` is evaluated by the forward transfer
//! recursion `Z_i(x) = e^{beta w_{i,x}} (Z_{i-1}(x-1) + Z_{i-1}(x+1)) / 2`,
//! carried with per-row maximum subtraction so no overflow occurs for any
//! `beta * max(w)`. Rows are renormalized by exact powers of two; the weight
//! offsets accumulate in log space.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::chaos::walk_row;
use crate::disorder::{truncate, Family, TailSpec};

/// Log-zero sentinel for partition functions over empty path sets.
pub const LOG_ZERO: f64 = f64::NEG_INFINITY;

const BRUTE_FORCE_MAX_N: usize = 20;

#[derive(Debug, Error)]
pub enum PolymerError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("path enumeration refused: n = {n} exceeds the cost guard {max}")]
    CostGuard { n: usize, max: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad environment dump: {0}")]
    Format(String),
}

/// Realized disorder field on the parity cone, reproducible from
/// `(seed, spec, n)`.
#[derive(Debug, Clone)]
pub struct Environment {
    pub n: usize,
    pub seed: u64,
    pub spec: TailSpec,
    /// Set when the field was produced by [`truncated_env`].
    pub truncated_at: Option<f64>,
    omega: Vec<f64>,
}

fn row_offset(i: usize) -> usize {
    // sum_{j=1}^{i-1} (j + 1)
    (i - 1) * (i + 2) / 2
}

impl Environment {
    /// Weights of row `i` (`1 <= i <= n`), `x = -i + 2j` for slot `j`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.omega[row_offset(i)..row_offset(i) + i + 1]
    }

    pub fn get(&self, i: usize, x: i64) -> f64 {
        debug_assert!((i as i64 + x) % 2 == 0 && x.unsigned_abs() as usize <= i);
        self.row(i)[((x + i as i64) / 2) as usize]
    }

    pub fn site_count(&self) -> usize {
        self.n * (self.n + 3) / 2
    }

    /// Binary dump: little-endian header (n, seed, family tag) followed by the
    /// row-major 64-bit weights. Debugging aid only; the seed suffices for
    /// reproducibility.
    pub fn dump<W: Write>(&self, mut w: W) -> Result<(), PolymerError> {
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&[self.spec.family.tag()])?;
        for v in &self.omega {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Read a dump written by [`Environment::dump`]; the family tag must match
    /// the provided spec.
    pub fn load<R: Read>(mut r: R, spec: TailSpec) -> Result<Environment, PolymerError> {
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let seed = u64::from_le_bytes(b8);
        let mut b1 = [0u8; 1];
        r.read_exact(&mut b1)?;
        let family = Family::from_tag(b1[0])
            .ok_or_else(|| PolymerError::Format(format!("unknown family tag {}", b1[0])))?;
        if family != spec.family {
            return Err(PolymerError::Format("family tag does not match spec".into()));
        }
        let count = n * (n + 3) / 2;
        let mut omega = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut b8)?;
            omega.push(f64::from_le_bytes(b8));
        }
        Ok(Environment { n, seed, spec, truncated_at: None, omega })
    }
}

/// Fill the parity cone with i.i.d. draws in row-major order (row `i`
/// ascending in `x`), from a ChaCha8 stream keyed by `seed`.
pub fn generate_env(spec: &TailSpec, n: usize, seed: u64) -> Environment {
    assert!(n >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = n * (n + 3) / 2;
    let mut omega = Vec::with_capacity(count);
    for i in 1..=n {
        for _ in 0..=i {
            omega.push(spec.sample_one(&mut rng));
        }
    }
    Environment { n, seed, spec: *spec, truncated_at: None, omega }
}

/// Pointwise one-sided truncation of the field; keeps seed and provenance.
pub fn truncated_env(env: &Environment, k: f64) -> Environment {
    let omega = env.omega.iter().map(|&w| truncate(w, k)).collect();
    Environment {
        n: env.n,
        seed: env.seed,
        spec: env.spec,
        truncated_at: Some(k),
        omega,
    }
}

/// Total excess weight above the cutoff among sites with `|x| < h`.
pub fn excess_weight(env: &Environment, k: f64, h: i64) -> f64 {
    assert!(k > 0.0 && h >= 1);
    let mut total = 0.0;
    for i in 1..=env.n {
        let row = env.row(i);
        for (j, &w) in row.iter().enumerate() {
            let x = -(i as i64) + 2 * j as i64;
            if x.abs() < h && w > k {
                total += w;
            }
        }
    }
    total
}

/// Log partition function together with the per-endpoint log weights.
#[derive(Debug, Clone)]
pub struct PartitionResult {
    pub n: usize,
    pub beta: f64,
    pub restricted_h: Option<i64>,
    /// `log Z`; [`LOG_ZERO`] when the admissible path set is empty.
    pub log_z: f64,
    endpoint_log_weights: Vec<f64>,
}

impl PartitionResult {
    /// Per-endpoint log contributions at `x = -n + 2j`.
    pub fn endpoint_log_weights(&self) -> &[f64] {
        &self.endpoint_log_weights
    }

    pub fn endpoint_position(&self, j: usize) -> i64 {
        -(self.n as i64) + 2 * j as i64
    }

    /// Endpoint marginal of the polymer measure. Degenerate (all zeros) when
    /// the admissible path set is empty.
    pub fn endpoint_law(&self) -> Vec<f64> {
        if self.log_z == LOG_ZERO {
            return vec![0.0; self.endpoint_log_weights.len()];
        }
        self.endpoint_log_weights.iter().map(|&l| (l - self.log_z).exp()).collect()
    }

    pub fn mean_abs_endpoint(&self) -> f64 {
        let law = self.endpoint_law();
        law.iter()
            .enumerate()
            .map(|(j, &p)| p * self.endpoint_position(j).abs() as f64)
            .sum()
    }
}

/// Transfer-matrix state: one row of linear values normalized by exact powers
/// of two, with the weight maxima carried in `log_offset`.
struct DpState {
    vals: Vec<f64>,
    row: usize,
    exp2: i64,
    log_offset: f64,
    dead: bool,
}

impl DpState {
    fn new() -> DpState {
        DpState { vals: vec![1.0], row: 0, exp2: 0, log_offset: 0.0, dead: false }
    }

    /// Advance one row. `weights` are the raw disorder values of row
    /// `self.row + 1`; states with `|x| >= h` are removed when `h` is given.
    fn advance(&mut self, weights: &[f64], beta: f64, h: Option<i64>) {
        let i = self.row + 1;
        debug_assert_eq!(weights.len(), i + 1);
        let alive = |j: usize| -> bool {
            match h {
                Some(h) => (-(i as i64) + 2 * j as i64).abs() < h,
                None => true,
            }
        };
        let mut next = vec![0.0; i + 1];
        if !self.dead {
            // Normalize by the largest surviving weight so the exponentials
            // stay in [0, 1]; killed states must not dominate the offset.
            let mut m = f64::NEG_INFINITY;
            for (j, &w) in weights.iter().enumerate() {
                if alive(j) {
                    m = m.max(beta * w);
                }
            }
            if m == f64::NEG_INFINITY {
                self.dead = true;
            } else {
                let mut row_max = 0.0f64;
                for (j, &w) in weights.iter().enumerate() {
                    if !alive(j) {
                        continue;
                    }
                    let left = if j >= 1 { self.vals[j - 1] } else { 0.0 };
                    let right = if j < i { self.vals[j] } else { 0.0 };
                    let u = 0.5 * (left + right);
                    let v = u * (beta * w - m).exp();
                    next[j] = v;
                    row_max = row_max.max(v);
                }
                self.log_offset += m;
                if row_max == 0.0 {
                    self.dead = true;
                } else {
                    // Exact power-of-two rescale when the row drifts too far.
                    let e = ((row_max.to_bits() >> 52) & 0x7ff) as i64 - 1023;
                    if e.abs() > 256 {
                        let scale = 2.0f64.powi(-e as i32);
                        for v in next.iter_mut() {
                            *v *= scale;
                        }
                        self.exp2 += e;
                    }
                }
            }
        }
        self.vals = next;
        self.row = i;
    }

    fn finish(self, beta: f64, restricted_h: Option<i64>) -> PartitionResult {
        let n = self.row;
        if self.dead {
            return PartitionResult {
                n,
                beta,
                restricted_h,
                log_z: LOG_ZERO,
                endpoint_log_weights: vec![LOG_ZERO; n + 1],
            };
        }
        let shift = self.exp2 as f64 * std::f64::consts::LN_2 + self.log_offset;
        let sum: f64 = self.vals.iter().sum();
        let log_z = sum.ln() + shift;
        let endpoint_log_weights = self.vals.iter().map(|&v| v.ln() + shift).collect();
        PartitionResult { n, beta, restricted_h, log_z, endpoint_log_weights }
    }
}

fn srw_result(n: usize, beta: f64, restricted_h: Option<i64>) -> PartitionResult {
    let weights = walk_row(n).iter().map(|&p| p.ln()).collect();
    PartitionResult { n, beta, restricted_h, log_z: 0.0, endpoint_log_weights: weights }
}

/// Exact log partition function of the environment at inverse temperature
/// `beta >= 0`. At `beta = 0` the weights drop out and the simple-random-walk
/// answer (`log Z = 0` exactly) is returned.
pub fn log_partition(env: &Environment, beta: f64) -> PartitionResult {
    assert!(beta >= 0.0);
    if beta == 0.0 {
        return srw_result(env.n, beta, None);
    }
    let mut state = DpState::new();
    for i in 1..=env.n {
        state.advance(env.row(i), beta, None);
    }
    state.finish(beta, None)
}

/// Partition function restricted to paths with `max_i |s_i| < h` (strict).
/// Empty path sets (h = 1) yield the [`LOG_ZERO`] sentinel.
pub fn log_partition_restricted(
    env: &Environment,
    beta: f64,
    h: i64,
) -> Result<PartitionResult, PolymerError> {
    assert!(beta >= 0.0);
    if h <= 0 {
        return Err(PolymerError::Domain(format!("block half-width must be >= 1, got {h}")));
    }
    if h > env.n as i64 {
        // No state can be removed; identical to the unrestricted path.
        let mut res = log_partition(env, beta);
        res.restricted_h = Some(h);
        return Ok(res);
    }
    let mut state = DpState::new();
    for i in 1..=env.n {
        state.advance(env.row(i), beta, Some(h));
    }
    Ok(state.finish(beta, Some(h)))
}

/// Endpoint marginal of the polymer measure.
pub fn endpoint_law(env: &Environment, beta: f64) -> Vec<f64> {
    log_partition(env, beta).endpoint_law()
}

/// `E_polymer |s_n|` for one realized environment.
pub fn mean_abs_endpoint(env: &Environment, beta: f64) -> f64 {
    log_partition(env, beta).mean_abs_endpoint()
}

/// One streamed evaluation: raw and truncated partition functions plus the
/// endpoint statistics, without materializing the environment. Rows are
/// regenerated from the seed in the same order as [`generate_env`], so the
/// results are bit-identical to the materialized path.
#[derive(Debug, Clone, Copy)]
pub struct StreamEval {
    pub log_z_raw: f64,
    pub log_z_trunc: f64,
    pub mean_abs_endpoint: f64,
}

pub fn stream_point(spec: &TailSpec, n: usize, seed: u64, beta: f64, k: f64) -> StreamEval {
    assert!(n >= 1 && beta >= 0.0 && k > 0.0);
    if beta == 0.0 {
        let res = srw_result(n, beta, None);
        return StreamEval {
            log_z_raw: 0.0,
            log_z_trunc: 0.0,
            mean_abs_endpoint: res.mean_abs_endpoint(),
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = DpState::new();
    let mut trunc = DpState::new();
    let mut row = Vec::with_capacity(n + 1);
    let mut trow = Vec::with_capacity(n + 1);
    for i in 1..=n {
        row.clear();
        trow.clear();
        for _ in 0..=i {
            let w = spec.sample_one(&mut rng);
            row.push(w);
            trow.push(truncate(w, k));
        }
        raw.advance(&row, beta, None);
        trunc.advance(&trow, beta, None);
    }
    let raw = raw.finish(beta, None);
    let trunc = trunc.finish(beta, None);
    StreamEval {
        log_z_raw: raw.log_z,
        log_z_trunc: trunc.log_z,
        mean_abs_endpoint: raw.mean_abs_endpoint(),
    }
}

/// Exact enumeration over all `2^n` paths; the oracle for the transfer
/// matrix. Refuses `n > 20`.
pub fn brute_force_log_partition(
    env: &Environment,
    beta: f64,
    h: Option<i64>,
) -> Result<f64, PolymerError> {
    let n = env.n;
    if n > BRUTE_FORCE_MAX_N {
        return Err(PolymerError::CostGuard { n, max: BRUTE_FORCE_MAX_N });
    }
    if let Some(h) = h {
        if h <= 0 {
            return Err(PolymerError::Domain(format!("block half-width must be >= 1, got {h}")));
        }
    }
    let mut energies = Vec::with_capacity(1usize << n);
    for mask in 0u64..(1u64 << n) {
        let mut s = 0i64;
        let mut energy = 0.0;
        let mut max_abs = 0i64;
        for i in 1..=n {
            s += if (mask >> (i - 1)) & 1 == 1 { 1 } else { -1 };
            max_abs = max_abs.max(s.abs());
            energy += env.get(i, s);
        }
        if let Some(h) = h {
            if max_abs >= h {
                continue;
            }
        }
        energies.push(beta * energy);
    }
    if energies.is_empty() {
        return Ok(LOG_ZERO);
    }
    let m = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = energies.iter().map(|&e| (e - m).exp()).sum();
    // 2^{-n} is exact; at beta = 0 this gives log 1 = 0 with no rounding.
    Ok(m + (sum * 2.0f64.powi(-(n as i32))).ln())
}

/// `P(max_{0<=i<=n} s_i >= r)` by the reflection identity
/// `2 P(s_n >= r) - P(s_n = r)`, from exact binomial sums.
pub fn feller_max_probability(n: u64, r: u64) -> f64 {
    assert!(n >= 1 && r >= 1);
    if r > n {
        return 0.0;
    }
    // P(s_n = x) needs n + x even; s_n >= r translates to heads >= (n+r)/2.
    if n <= 100 {
        let binom = binomial_row_u128(n);
        let j0 = (n + r).div_ceil(2);
        let tail: u128 = binom[j0 as usize..].iter().sum();
        let atom = if (n + r) % 2 == 0 { binom[((n + r) / 2) as usize] } else { 0 };
        let num = 2 * tail - atom;
        num as f64 * 2.0f64.powi(-(n as i32))
    } else {
        let nf = n as f64;
        let ln2 = std::f64::consts::LN_2;
        let lnc = |j: f64| ln_gamma(nf + 1.0) - ln_gamma(j + 1.0) - ln_gamma(nf - j + 1.0);
        let j0 = (n + r).div_ceil(2);
        let mut tail = 0.0;
        for j in j0..=n {
            tail += (lnc(j as f64) - nf * ln2).exp();
        }
        let atom = if (n + r) % 2 == 0 {
            (lnc(((n + r) / 2) as f64) - nf * ln2).exp()
        } else {
            0.0
        };
        2.0 * tail - atom
    }
}

fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

fn binomial_row_u128(n: u64) -> Vec<u128> {
    let mut row = vec![1u128];
    for _ in 0..n {
        let mut next = vec![1u128; row.len() + 1];
        for j in 1..row.len() {
            next[j] = row[j - 1] + row[j];
        }
        row = next;
    }
    row
}

/// Increasing block half-widths `h_1 < ... < h_l` with `h_{l-1} < n <= h_l`.
#[derive(Debug, Clone)]
pub struct BlockSpec {
    h_list: Vec<i64>,
}

impl BlockSpec {
    pub fn new(h_list: Vec<i64>, n: usize) -> Result<BlockSpec, PolymerError> {
        if h_list.is_empty() {
            return Err(PolymerError::Domain("block schedule must be nonempty".into()));
        }
        if h_list[0] < 1 || h_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PolymerError::Domain("block half-widths must be strictly increasing and >= 1".into()));
        }
        let last = *h_list.last().unwrap();
        if last < n as i64 {
            return Err(PolymerError::Domain(format!("last half-width {last} must be >= n = {n}")));
        }
        if h_list.len() >= 2 && h_list[h_list.len() - 2] >= n as i64 {
            return Err(PolymerError::Domain("second-to-last half-width must be < n".into()));
        }
        Ok(BlockSpec { h_list })
    }

    pub fn half_widths(&self) -> &[i64] {
        &self.h_list
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lomax(alpha: f64, c_minus: f64) -> TailSpec {
        TailSpec::standardized_lomax(alpha, c_minus, 1.0).unwrap()
    }

    #[test]
    fn cone_shape_and_determinism() {
        let spec = lomax(4.0, 1.0);
        let env = generate_env(&spec, 1, 7);
        assert_eq!(env.site_count(), 2);
        assert_eq!(env.row(1).len(), 2);

        let a = generate_env(&spec, 12, 99);
        let b = generate_env(&spec, 12, 99);
        assert_eq!(a.row(12), b.row(12));
        assert_eq!(a.get(12, -12), a.row(12)[0]);
    }

    #[test]
    fn environment_mean_sanity() {
        let spec = lomax(4.0, 1.0);
        let env = generate_env(&spec, 100, 123);
        let count = env.site_count() as f64;
        let mean: f64 = (1..=100).map(|i| env.row(i).iter().sum::<f64>()).sum::<f64>() / count;
        assert!(mean.abs() < 4.0 / count.sqrt(), "mean={mean}");
    }

    #[test]
    fn beta_zero_is_exact() {
        let spec = lomax(4.0, 1.0);
        for n in [3, 17, 64] {
            let env = generate_env(&spec, n, 5);
            let res = log_partition(&env, 0.0);
            assert_eq!(res.log_z, 0.0);
            let bf = brute_force_log_partition(&env, 0.0, None);
            if n <= 20 {
                assert_eq!(bf.unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn single_step_closed_form() {
        let spec = lomax(4.0, 1.0);
        let mut env = generate_env(&spec, 1, 11);
        let (a, b) = (env.row(1)[1], env.row(1)[0]);
        let beta = 0.8;
        let res = log_partition(&env, beta);
        let expect = (0.5 * ((beta * a).exp() + (beta * b).exp())).ln();
        assert!((res.log_z - expect).abs() < 1e-14);
        // endpoint weights split the same value
        let law = res.endpoint_law();
        assert!((law[0] + law[1] - 1.0).abs() < 1e-14);
        env.truncated_at = None;
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for case in 0..10 {
            let alpha = [1.5, 4.0, 8.0][case % 3];
            let spec = lomax(alpha, 1.0);
            let n = 8 + case % 7;
            let env = generate_env(&spec, n, 1000 + case as u64);
            let beta: f64 = rng.gen::<f64>() * 2.0;
            let dp = log_partition(&env, beta).log_z;
            let bf = brute_force_log_partition(&env, beta, None).unwrap();
            assert!((dp - bf).abs() < 1e-10, "n={n} beta={beta} dp={dp} bf={bf}");
        }
    }

    #[test]
    fn endpoint_weights_sum_to_log_z() {
        let spec = lomax(1.5, 1.0);
        let env = generate_env(&spec, 50, 3);
        for beta in [0.0, 0.3, 1.1] {
            let res = log_partition(&env, beta);
            let m = res
                .endpoint_log_weights()
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            let lse = m
                + res
                    .endpoint_log_weights()
                    .iter()
                    .map(|&l| (l - m).exp())
                    .sum::<f64>()
                    .ln();
            assert!(
                (lse - res.log_z).abs() <= 1e-12 * (1.0 + res.log_z.abs()),
                "beta={beta} lse={lse} log_z={}",
                res.log_z
            );
        }
    }

    #[test]
    fn restricted_partition() {
        let spec = lomax(4.0, 0.5);
        let env = generate_env(&spec, 12, 21);
        let beta = 0.7;

        // h = 1 leaves no paths: |s_1| = 1 already violates |s| < 1.
        let res = log_partition_restricted(&env, beta, 1).unwrap();
        assert_eq!(res.log_z, LOG_ZERO);
        assert_eq!(brute_force_log_partition(&env, beta, Some(1)).unwrap(), LOG_ZERO);

        // h > n is bit-identical to the unrestricted evaluation.
        let unres = log_partition(&env, beta);
        let loose = log_partition_restricted(&env, beta, 13).unwrap();
        assert_eq!(unres.log_z.to_bits(), loose.log_z.to_bits());

        // h = 3 against the enumeration oracle.
        let dp = log_partition_restricted(&env, beta, 3).unwrap().log_z;
        let bf = brute_force_log_partition(&env, beta, Some(3)).unwrap();
        assert!((dp - bf).abs() < 1e-10, "dp={dp} bf={bf}");

        // Monotone in h and below the unrestricted value; equality at n + 1.
        let mut prev = LOG_ZERO;
        for h in 1..=(env.n as i64 + 1) {
            let v = log_partition_restricted(&env, beta, h).unwrap().log_z;
            assert!(v >= prev);
            assert!(v <= unres.log_z + 1e-12);
            prev = v;
        }
        assert_eq!(prev.to_bits(), unres.log_z.to_bits());

        assert!(log_partition_restricted(&env, beta, 0).is_err());
    }

    #[test]
    fn endpoint_law_binomial_and_concentration() {
        let spec = lomax(4.0, 1.0);
        let env = generate_env(&spec, 2, 9);
        let law = endpoint_law(&env, 0.0);
        assert!((law[0] - 0.25).abs() < 1e-14);
        assert!((law[1] - 0.5).abs() < 1e-14);
        assert!((law[2] - 0.25).abs() < 1e-14);
        assert!((law.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        // Exact binomial law at beta = 0 for all n <= 64.
        for n in [8usize, 33, 64] {
            let env = generate_env(&spec, n, 2);
            let law = endpoint_law(&env, 0.0);
            let p = walk_row(n);
            for j in 0..=n {
                assert!((law[j] - p[j]).abs() < 1e-12, "n={n} j={j}");
            }
        }

        // One huge weight in the last row pins the endpoint.
        let mut env = generate_env(&spec, 10, 4);
        for v in env.omega.iter_mut() {
            *v = 0.0;
        }
        let idx = row_offset(10) + ((4 + 10) / 2) as usize;
        env.omega[idx] = 50.0;
        let res = log_partition(&env, 1.0);
        let law = res.endpoint_law();
        assert!(law[7] > 0.99, "law={law:?}");
        assert!((res.mean_abs_endpoint() - 4.0).abs() < 0.05);
    }

    #[test]
    fn mean_abs_endpoint_exact_values() {
        let spec = lomax(4.0, 1.0);
        let env2 = generate_env(&spec, 2, 1);
        assert_eq!(mean_abs_endpoint(&env2, 0.0), 1.0);
        let env4 = generate_env(&spec, 4, 1);
        assert_eq!(mean_abs_endpoint(&env4, 0.0), 1.5);
    }

    #[test]
    fn excess_weight_against_direct_sum() {
        let spec = lomax(1.5, 1.0);
        let env = generate_env(&spec, 30, 77);
        let k = 2.0;

        // h = 1: only x = 0 sites (even rows) can contribute.
        let direct: f64 = (1..=30)
            .filter(|i| i % 2 == 0)
            .map(|i| {
                let w = env.get(i, 0);
                if w > k {
                    w
                } else {
                    0.0
                }
            })
            .sum();
        assert_eq!(excess_weight(&env, k, 1), direct);

        assert_eq!(excess_weight(&env, 1e12, 5), 0.0);

        // Monotone: nondecreasing in h, nonincreasing in k.
        let mut prev = 0.0;
        for h in [1, 3, 8, 31] {
            let v = excess_weight(&env, k, h);
            assert!(v >= prev);
            prev = v;
        }
        assert!(excess_weight(&env, 1.0, 8) >= excess_weight(&env, 3.0, 8));
    }

    #[test]
    fn monotone_in_disorder() {
        let spec = lomax(4.0, 1.0);
        let beta = 0.9;
        let base = generate_env(&spec, 10, 31);
        let z0 = log_partition(&base, beta).log_z;
        for (i, j) in [(3usize, 1usize), (7, 4), (10, 10)] {
            let mut env = base.clone();
            env.omega[row_offset(i) + j] += 0.5;
            let z1 = log_partition(&env, beta).log_z;
            assert!(z1 >= z0, "i={i} j={j}");
        }
    }

    #[test]
    fn truncation_inequalities_per_block() {
        let spec = lomax(1.5, 1.0);
        let beta = 0.4;
        let k = 3.0;
        for seed in [5u64, 6, 7] {
            let env = generate_env(&spec, 24, seed);
            let tenv = truncated_env(&env, k);
            let raw = log_partition(&env, beta).log_z;
            let tr = log_partition(&tenv, beta).log_z;
            assert!(raw - tr >= 0.0, "gap={}", raw - tr);

            let blocks = BlockSpec::new(vec![4, 9, 24], 24).unwrap();
            for &h in blocks.half_widths() {
                let zb = log_partition_restricted(&env, beta, h).unwrap().log_z;
                let ztb = log_partition_restricted(&tenv, beta, h).unwrap().log_z;
                let m = excess_weight(&env, k, h);
                assert!(zb - ztb >= -1e-12);
                assert!(zb - ztb <= beta * m + 1e-12, "h={h}");
            }
        }
    }

    #[test]
    fn truncated_env_marks_and_truncates() {
        let spec = lomax(1.5, 0.5);
        let env = generate_env(&spec, 6, 8);
        let t = truncated_env(&env, 1.0);
        assert_eq!(t.truncated_at, Some(1.0));
        assert_eq!(t.seed, env.seed);
        for i in 1..=6 {
            for (a, b) in env.row(i).iter().zip(t.row(i)) {
                assert_eq!(*b, truncate(*a, 1.0));
            }
        }
    }

    #[test]
    fn feller_identity_exact() {
        assert_eq!(feller_max_probability(2, 1), 0.5);
        assert_eq!(feller_max_probability(4, 2), 0.375);

        // Exact agreement with enumeration for all n <= 16, r <= n.
        for n in 1..=16u64 {
            let mut max_counts = vec![0u64; n as usize + 1];
            for mask in 0u64..(1 << n) {
                let mut s = 0i64;
                let mut mx = 0i64;
                for i in 0..n {
                    s += if (mask >> i) & 1 == 1 { 1 } else { -1 };
                    mx = mx.max(s);
                }
                max_counts[mx.max(0) as usize] += 1;
            }
            for r in 1..=n {
                let count: u64 = max_counts[r as usize..].iter().sum();
                let exact = count as f64 * 2.0f64.powi(-(n as i32));
                assert_eq!(feller_max_probability(n, r), exact, "n={n} r={r}");
            }
        }
    }

    #[test]
    fn feller_gaussian_bound() {
        for n in [4u64, 16, 64, 150, 1000] {
            for r in 1..=n.min(60) {
                let p = feller_max_probability(n, r);
                let bound = 4.0 * (-((r * r) as f64) / (2.0 * n as f64)).exp();
                assert!(p <= bound + 1e-12, "n={n} r={r} p={p} bound={bound}");
            }
        }
    }

    #[test]
    fn streaming_bit_identical_to_materialized() {
        let spec = lomax(1.5, 1.0);
        let (n, seed, beta, k) = (40usize, 4242u64, 0.35, 5.0);
        let streamed = stream_point(&spec, n, seed, beta, k);
        let env = generate_env(&spec, n, seed);
        let raw = log_partition(&env, beta);
        let trunc = log_partition(&truncated_env(&env, k), beta);
        assert_eq!(streamed.log_z_raw.to_bits(), raw.log_z.to_bits());
        assert_eq!(streamed.log_z_trunc.to_bits(), trunc.log_z.to_bits());
        assert_eq!(streamed.mean_abs_endpoint.to_bits(), raw.mean_abs_endpoint().to_bits());
    }

    #[test]
    fn dump_roundtrip() {
        let spec = lomax(4.0, 0.5);
        let env = generate_env(&spec, 9, 13);
        let mut buf = Vec::new();
        env.dump(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 8 + 1 + 8 * env.site_count());
        let back = Environment::load(buf.as_slice(), spec).unwrap();
        assert_eq!(back.n, env.n);
        assert_eq!(back.seed, env.seed);
        for i in 1..=9 {
            assert_eq!(back.row(i), env.row(i));
        }
        assert!(Environment::load(buf.as_slice(), TailSpec::gaussian()).is_err());
    }

    #[test]
    fn brute_force_cost_guard() {
        let spec = lomax(4.0, 1.0);
        let env = generate_env(&spec, 21, 1);
        assert!(matches!(
            brute_force_log_partition(&env, 0.5, None),
            Err(PolymerError::CostGuard { n: 21, .. })
        ));
    }

    #[test]
    fn block_spec_validation() {
        assert!(BlockSpec::new(vec![2, 5, 16], 16).is_ok());
        assert!(BlockSpec::new(vec![2, 5, 15], 16).is_err()); // last < n
        assert!(BlockSpec::new(vec![5, 2, 16], 16).is_err()); // not increasing
        assert!(BlockSpec::new(vec![2, 16, 17], 16).is_err()); // h_{l-1} >= n
        assert!(BlockSpec::new(vec![], 4).is_err());
    }
}
