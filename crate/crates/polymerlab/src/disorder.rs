//! Heavy-tailed disorder families with regularly varying right tails.
//!
//! Three concrete laws are provided:
//!
//! * [`Family::StandardizedTwoSidedLomax`] — density proportional to
//!   `(1 + |x|/b)^(-(1+alpha))` with right-branch weight `1/(1+c_minus)` and
//!   left-branch weight `c_minus/(1+c_minus)`, affinely standardized to mean 0
//!   and variance 1 when `alpha > 2` (mean 0 only when `1 < alpha <= 2`).
//! * [`Family::ParetoOneSided`] — `P(w > x) = x^(-alpha)` exactly for `x >= 1`.
//!   Analytically exact for tail/quantile tests; it is not mean-zero, so it is
//!   never used as polymer disorder where a mean-zero law is required.
//! * [`Family::GaussianReference`] — the standard normal, used as the
//!   light-tailed reference in universality comparisons (`alpha` is reported
//!   as infinity).
//!
//! Slowly varying corrections are restricted to asymptotic constants; general
//! `L(x)` is an extension point.
//!
//! All expectations (moments of the positive part, the negative-part moment
//! generating function, truncated cumulant generating functions) are computed
//! by tanh-sinh quadrature in probability space, with the contribution of each
//! tail parametrized by the tail probability itself so that no accuracy is
//! lost far out in the tails.

use rand::distributions::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf;
use thiserror::Error;

use crate::quad::tanh_sinh;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const QUAD_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum DisorderError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("moment of order {order} diverges for tail index alpha = {alpha}")]
    DivergentMoment { order: u32, alpha: f64 },
    #[error("tail index alpha = {alpha} unsupported: {why}")]
    UnsupportedRegime { alpha: f64, why: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    StandardizedTwoSidedLomax,
    ParetoOneSided,
    GaussianReference,
}

impl Family {
    /// Tag used in the binary environment dump header.
    pub fn tag(self) -> u8 {
        match self {
            Family::StandardizedTwoSidedLomax => 0,
            Family::ParetoOneSided => 1,
            Family::GaussianReference => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Family> {
        match tag {
            0 => Some(Family::StandardizedTwoSidedLomax),
            1 => Some(Family::ParetoOneSided),
            2 => Some(Family::GaussianReference),
            _ => None,
        }
    }
}

/// `q^(-1/alpha)` with exact-power fast paths for the tail indices the
/// experiments sweep over. Environment generation applies this once per
/// lattice site, so the sqrt/cbrt chains matter.
#[derive(Debug, Clone, Copy)]
enum InvAlphaPow {
    One,
    ThreeHalves,
    Two,
    Four,
    Eight,
    General(f64),
}

impl InvAlphaPow {
    fn for_alpha(alpha: f64) -> Self {
        if alpha == 1.0 {
            InvAlphaPow::One
        } else if alpha == 1.5 {
            InvAlphaPow::ThreeHalves
        } else if alpha == 2.0 {
            InvAlphaPow::Two
        } else if alpha == 4.0 {
            InvAlphaPow::Four
        } else if alpha == 8.0 {
            InvAlphaPow::Eight
        } else {
            InvAlphaPow::General(-1.0 / alpha)
        }
    }

    #[inline]
    fn apply(self, q: f64) -> f64 {
        match self {
            InvAlphaPow::One => 1.0 / q,
            InvAlphaPow::ThreeHalves => {
                let c = q.cbrt();
                1.0 / (c * c)
            }
            InvAlphaPow::Two => 1.0 / q.sqrt(),
            InvAlphaPow::Four => 1.0 / q.sqrt().sqrt(),
            InvAlphaPow::Eight => 1.0 / q.sqrt().sqrt().sqrt(),
            InvAlphaPow::General(e) => q.powf(e),
        }
    }
}

/// A disorder law satisfying the regular-variation tail assumption, with the
/// left-tail ratio `c_minus` and the standardization constants derived from
/// `(family, alpha, c_minus, scale)` rather than stored in configs.
#[derive(Debug, Clone, Copy)]
pub struct TailSpec {
    pub alpha: f64,
    pub c_minus: f64,
    pub family: Family,
    /// Family scale parameter `b`.
    pub scale: f64,
    /// Derived affine shift `mu` (subtracted before dividing by `std`).
    pub shift: f64,
    /// Derived affine scale `s`.
    pub std: f64,
    inv_pow: InvAlphaPow,
}

impl TailSpec {
    /// Two-sided Lomax standardized per the tail index: mean 0 and variance 1
    /// for `alpha > 2`, mean 0 for `1 < alpha <= 2`, raw otherwise.
    pub fn standardized_lomax(
        alpha: f64,
        c_minus: f64,
        scale: f64,
    ) -> Result<TailSpec, DisorderError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(DisorderError::Domain(format!("alpha must be positive, got {alpha}")));
        }
        if !(c_minus >= 0.0 && c_minus.is_finite()) {
            return Err(DisorderError::Domain(format!("c_minus must be >= 0, got {c_minus}")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(DisorderError::Domain(format!("scale must be positive, got {scale}")));
        }
        let r = 1.0 / (1.0 + c_minus);
        let (shift, std) = if alpha > 2.0 {
            let mean_y = (1.0 - c_minus) * r / (alpha - 1.0);
            let second_y = 2.0 / ((alpha - 1.0) * (alpha - 2.0));
            let var_y = second_y - mean_y * mean_y;
            (scale * mean_y, scale * var_y.sqrt())
        } else if alpha > 1.0 {
            let mean_y = (1.0 - c_minus) * r / (alpha - 1.0);
            (scale * mean_y, 1.0)
        } else {
            (0.0, 1.0)
        };
        Ok(TailSpec {
            alpha,
            c_minus,
            family: Family::StandardizedTwoSidedLomax,
            scale,
            shift,
            std,
            inv_pow: InvAlphaPow::for_alpha(alpha),
        })
    }

    /// One-sided Pareto with `P(w > x) = x^(-alpha)` exactly on `x >= 1`.
    pub fn pareto(alpha: f64) -> Result<TailSpec, DisorderError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(DisorderError::Domain(format!("alpha must be positive, got {alpha}")));
        }
        Ok(TailSpec {
            alpha,
            c_minus: 0.0,
            family: Family::ParetoOneSided,
            scale: 1.0,
            shift: 0.0,
            std: 1.0,
            inv_pow: InvAlphaPow::for_alpha(alpha),
        })
    }

    /// Standard normal reference law.
    pub fn gaussian() -> TailSpec {
        TailSpec {
            alpha: f64::INFINITY,
            c_minus: 1.0,
            family: Family::GaussianReference,
            scale: 1.0,
            shift: 0.0,
            std: 1.0,
            inv_pow: InvAlphaPow::General(0.0),
        }
    }

    pub fn from_parts(
        family: Family,
        alpha: f64,
        c_minus: f64,
        scale: f64,
    ) -> Result<TailSpec, DisorderError> {
        match family {
            Family::StandardizedTwoSidedLomax => Self::standardized_lomax(alpha, c_minus, scale),
            Family::ParetoOneSided => Self::pareto(alpha),
            Family::GaussianReference => Ok(Self::gaussian()),
        }
    }

    fn r(&self) -> f64 {
        1.0 / (1.0 + self.c_minus)
    }

    /// Raw branch variable `y = (s*x + mu)/b` of the underlying Lomax.
    fn y_of(&self, x: f64) -> f64 {
        (self.std * x + self.shift) / self.scale
    }

    fn x_of_y(&self, y: f64) -> f64 {
        (self.scale * y - self.shift) / self.std
    }

    /// The point where the two Lomax branches meet (image of y = 0).
    fn branch_point(&self) -> f64 {
        -self.shift / self.std
    }

    /// Upper tail `P(w > x)`, exact closed form per family.
    pub fn tail_cdf_bar(&self, x: f64) -> f64 {
        match self.family {
            Family::StandardizedTwoSidedLomax => {
                let y = self.y_of(x);
                if y >= 0.0 {
                    self.r() * (1.0 + y).powf(-self.alpha)
                } else {
                    1.0 - self.c_minus * self.r() * (1.0 - y).powf(-self.alpha)
                }
            }
            Family::ParetoOneSided => {
                if x < 1.0 {
                    1.0
                } else {
                    x.powf(-self.alpha)
                }
            }
            Family::GaussianReference => 0.5 * erf::erfc(x / SQRT_2),
        }
    }

    /// `P(w <= x)`, evaluated on the branch that keeps precision.
    pub fn cdf(&self, x: f64) -> f64 {
        match self.family {
            Family::StandardizedTwoSidedLomax => {
                let y = self.y_of(x);
                if y >= 0.0 {
                    1.0 - self.r() * (1.0 + y).powf(-self.alpha)
                } else {
                    self.c_minus * self.r() * (1.0 - y).powf(-self.alpha)
                }
            }
            Family::ParetoOneSided => {
                if x < 1.0 {
                    0.0
                } else {
                    1.0 - x.powf(-self.alpha)
                }
            }
            Family::GaussianReference => 0.5 * erf::erfc(-x / SQRT_2),
        }
    }

    /// Inverse of the upper tail: the `x` with `P(w > x) = q`, parametrized by
    /// the tail probability so deep upper quantiles lose no precision.
    /// `q` must lie in `(0, 1)`.
    fn quantile_upper_raw(&self, q: f64) -> f64 {
        match self.family {
            Family::StandardizedTwoSidedLomax => {
                let r = self.r();
                if q <= r {
                    self.x_of_y(self.inv_pow.apply(q / r) - 1.0)
                } else {
                    let p = 1.0 - q;
                    self.x_of_y(1.0 - self.inv_pow.apply(p / (self.c_minus * r)))
                }
            }
            Family::ParetoOneSided => self.inv_pow.apply(q),
            Family::GaussianReference => SQRT_2 * erf::erfc_inv(2.0 * q),
        }
    }

    /// Inverse CDF parametrized by the lower-tail probability `p in (0, 1)`.
    fn quantile_lower_raw(&self, p: f64) -> f64 {
        match self.family {
            Family::StandardizedTwoSidedLomax => {
                let r = self.r();
                let cl = self.c_minus * r;
                if p < cl {
                    self.x_of_y(1.0 - self.inv_pow.apply(p / cl))
                } else {
                    self.x_of_y(self.inv_pow.apply((1.0 - p) / r) - 1.0)
                }
            }
            Family::ParetoOneSided => self.inv_pow.apply(1.0 - p),
            Family::GaussianReference => -SQRT_2 * erf::erfc_inv(2.0 * p),
        }
    }

    /// Two Newton corrections on the closed-form tail bring the Gaussian
    /// quantile to full double precision; the other families are exact.
    fn refine_upper(&self, mut x: f64, q: f64) -> f64 {
        if self.family == Family::GaussianReference {
            for _ in 0..2 {
                let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
                if pdf <= 0.0 || !x.is_finite() {
                    break;
                }
                x += (self.tail_cdf_bar(x) - q) / pdf;
            }
        }
        x
    }

    fn quantile_lower_refined(&self, p: f64) -> f64 {
        let x = self.quantile_lower_raw(p);
        if self.family == Family::GaussianReference {
            -self.refine_upper(-x, p)
        } else {
            x
        }
    }

    fn quantile_upper_refined(&self, q: f64) -> f64 {
        self.refine_upper(self.quantile_upper_raw(q), q)
    }

    /// `F^{-1}(u)` for `u in (0, 1)`.
    pub fn quantile(&self, u: f64) -> Result<f64, DisorderError> {
        if !(u > 0.0 && u < 1.0) {
            return Err(DisorderError::Domain(format!("quantile needs u in (0,1), got {u}")));
        }
        Ok(if u <= 0.5 {
            self.quantile_lower_refined(u)
        } else {
            self.quantile_upper_refined(1.0 - u)
        })
    }

    /// One inverse-CDF draw from an open-interval uniform on the stream.
    #[inline]
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let q: f64 = rng.sample(Open01);
        self.quantile_upper_raw(q)
    }

    /// `count` i.i.d. draws; deterministic given the stream state.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.sample_one(rng)).collect()
    }

    /// Scale function `m(t) = inf{x : P(w > x) <= 1/t}` for `t > 1`.
    pub fn m_of_t(&self, t: f64) -> Result<f64, DisorderError> {
        if !(t > 1.0) {
            return Err(DisorderError::Domain(format!("m(t) needs t > 1, got {t}")));
        }
        let q = 1.0 / t;
        let mut x = self.quantile_upper_refined(q);
        // These families are atomless with strictly decreasing tails, so the
        // infimum is the exact preimage; nudge up by ulps in case rounding
        // left the tail a hair above 1/t.
        for _ in 0..8 {
            if self.tail_cdf_bar(x) <= q {
                break;
            }
            x = next_up(x);
        }
        Ok(x)
    }

    /// `E[w_+^i]` by quadrature; diverges unless `i < alpha`.
    pub fn moment_plus(&self, i: u32) -> Result<f64, DisorderError> {
        if i < 1 {
            return Err(DisorderError::Domain("moment order must be >= 1".into()));
        }
        if (i as f64) >= self.alpha {
            return Err(DisorderError::DivergentMoment { order: i, alpha: self.alpha });
        }
        let p = i as i32;
        Ok(self.expect_between(0.0, f64::INFINITY, |x| x.powi(p)))
    }

    /// `E[exp(-beta * w_-)]`: the expectation of `exp(beta*w)` on `{w < 0}`
    /// plus `P(w >= 0)`. Always in `(0, 1]`.
    pub fn mgf_neg(&self, beta: f64) -> Result<f64, DisorderError> {
        if !(beta >= 0.0) {
            return Err(DisorderError::Domain(format!("mgf_neg needs beta >= 0, got {beta}")));
        }
        if beta == 0.0 {
            return Ok(1.0);
        }
        let tail = self.tail_cdf_bar(0.0);
        Ok(self.expect_between(f64::NEG_INFINITY, 0.0, |x| (beta * x).exp()) + tail)
    }

    /// Truncated cumulant generating function
    /// `log E[exp(beta * w * 1{w <= k})]`.
    pub fn lambda_trunc(&self, beta: f64, k: f64) -> Result<f64, DisorderError> {
        if !(beta >= 0.0) {
            return Err(DisorderError::Domain(format!("lambda_trunc needs beta >= 0, got {beta}")));
        }
        if !(k > 0.0) {
            return Err(DisorderError::Domain(format!("lambda_trunc needs k > 0, got {k}")));
        }
        if beta == 0.0 {
            return Ok(0.0);
        }
        // E[exp(beta*w~)] - 1 with integrand expm1(beta*x): weights above k
        // are reset to zero and contribute exp(0) - 1 = 0.
        let em1 = self.expect_between(f64::NEG_INFINITY, k, |x| (beta * x).exp_m1());
        Ok(em1.ln_1p())
    }

    /// Truncated mean `E[w * 1{|w| <= m}]` (the alpha = 1 centering term).
    pub fn truncated_mean_abs_window(&self, m: f64) -> f64 {
        assert!(m > 0.0);
        self.expect_between(-m, m, |x| x)
    }

    /// `E[g(w); lo < w <= hi]` by tail-parametrized tanh-sinh quadrature.
    ///
    /// `g` must be smooth on the open interval; kinks of the integrand must be
    /// passed as an endpoint by the caller.
    pub(crate) fn expect_between(&self, lo: f64, hi: f64, g: impl Fn(f64) -> f64) -> f64 {
        if !(lo < hi) {
            return 0.0;
        }
        match self.family {
            Family::GaussianReference => {
                let u_lo = self.cdf(lo);
                let u_hi = self.cdf(hi);
                let mut total = 0.0;
                // Lower half, parametrized by p = F(x).
                if u_lo < u_hi.min(0.5) {
                    let b = u_hi.min(0.5);
                    total += tanh_sinh(
                        |u, da, _| {
                            let p = if u_lo == 0.0 { da } else { u };
                            g(self.quantile_lower_refined(p))
                        },
                        u_lo,
                        b,
                        QUAD_TOL,
                    );
                }
                // Upper half, parametrized by q = 1 - F(x).
                if u_hi > u_lo.max(0.5) {
                    let q_hi = self.tail_cdf_bar(hi);
                    let q_lo = 1.0 - u_lo.max(0.5); // exact for u_lo in [1/2, 1]
                    total += tanh_sinh(
                        |q, da, _| {
                            let qq = if q_hi == 0.0 { da } else { q };
                            g(self.quantile_upper_refined(qq))
                        },
                        q_hi,
                        q_lo,
                        QUAD_TOL,
                    );
                }
                total
            }
            Family::ParetoOneSided => {
                // Single right branch: the law is uniform in q = x^(-alpha).
                let q_hi = self.tail_cdf_bar(hi);
                let q_lo = self.tail_cdf_bar(lo.max(1.0));
                if q_lo <= q_hi {
                    return 0.0;
                }
                tanh_sinh(
                    |q, da, _| {
                        let qq = if q_hi == 0.0 { da } else { q };
                        g(self.inv_pow.apply(qq))
                    },
                    q_hi,
                    q_lo,
                    QUAD_TOL,
                )
            }
            Family::StandardizedTwoSidedLomax => {
                let bp = self.branch_point();
                let mut total = 0.0;
                // Left branch: the law is uniform in p = F(x).
                if lo < bp && self.c_minus > 0.0 {
                    let x2 = hi.min(bp);
                    let p_lo = self.cdf(lo);
                    let p_hi = self.cdf(x2);
                    if p_lo < p_hi {
                        let cl = self.c_minus * self.r();
                        total += tanh_sinh(
                            |p, da, _| {
                                let pp = if p_lo == 0.0 { da } else { p };
                                g(self.x_of_y(1.0 - self.inv_pow.apply(pp / cl)))
                            },
                            p_lo,
                            p_hi,
                            QUAD_TOL,
                        );
                    }
                }
                // Right branch: uniform in q = 1 - F(x).
                if hi > bp {
                    let x1 = lo.max(bp);
                    let q_hi = self.tail_cdf_bar(hi);
                    let q_lo = self.tail_cdf_bar(x1);
                    if q_hi < q_lo {
                        let r = self.r();
                        total += tanh_sinh(
                            |q, da, _| {
                                let qq = if q_hi == 0.0 { da } else { q };
                                g(self.x_of_y(self.inv_pow.apply(qq / r) - 1.0))
                            },
                            q_hi,
                            q_lo,
                            QUAD_TOL,
                        );
                    }
                }
                total
            }
        }
    }
}

fn next_up(x: f64) -> f64 {
    if x.is_nan() || x == f64::INFINITY {
        return x;
    }
    let bits = if x == 0.0 {
        1
    } else if x > 0.0 {
        x.to_bits() + 1
    } else {
        x.to_bits() - 1
    };
    f64::from_bits(bits)
}

/// One-sided truncation: weights above the cutoff are replaced by zero,
/// negative weights pass through.
#[inline]
pub fn truncate(omega: f64, k: f64) -> f64 {
    debug_assert!(k > 0.0);
    if omega <= k {
        omega
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffRule {
    /// `alpha > 6`: cutoff at `1/beta_n`.
    HighAlpha,
    /// `alpha <= 6`: cutoff scaled by `m(n^{3/2} (log n)^eta) / m(n^{3/2})`.
    MidLowAlpha,
}

/// Truncation-level recipe; `eta` must lie strictly inside `(1/2, alpha)`.
#[derive(Debug, Clone, Copy)]
pub struct CutoffSpec {
    pub eta: f64,
    pub rule: CutoffRule,
}

impl CutoffSpec {
    /// Default exponent `eta = (1/2 + alpha)/2`, clamped below 6.
    pub fn for_spec(spec: &TailSpec) -> Result<CutoffSpec, DisorderError> {
        let eta = (0.5 * (0.5 + spec.alpha)).min(6.0);
        Self::with_eta(spec, eta)
    }

    pub fn with_eta(spec: &TailSpec, eta: f64) -> Result<CutoffSpec, DisorderError> {
        if spec.alpha <= 0.5 {
            return Err(DisorderError::UnsupportedRegime {
                alpha: spec.alpha,
                why: "the truncation scheme needs alpha > 1/2",
            });
        }
        if !(eta > 0.5 && eta < spec.alpha) {
            return Err(DisorderError::Domain(format!(
                "eta must lie in (1/2, alpha) = (0.5, {}), got {eta}",
                spec.alpha
            )));
        }
        let rule = if spec.alpha > 6.0 { CutoffRule::HighAlpha } else { CutoffRule::MidLowAlpha };
        Ok(CutoffSpec { eta, rule })
    }
}

/// Truncation level `k_n` for inverse temperature `beta_n` at horizon `n`.
pub fn cutoff_k(
    spec: &TailSpec,
    beta_n: f64,
    n: u64,
    cut: &CutoffSpec,
) -> Result<f64, DisorderError> {
    if spec.alpha <= 0.5 {
        return Err(DisorderError::UnsupportedRegime {
            alpha: spec.alpha,
            why: "the truncation scheme needs alpha > 1/2",
        });
    }
    if !(beta_n > 0.0) {
        return Err(DisorderError::Domain(format!("cutoff_k needs beta_n > 0, got {beta_n}")));
    }
    if n < 2 {
        return Err(DisorderError::Domain(format!("cutoff_k needs n >= 2, got {n}")));
    }
    match cut.rule {
        CutoffRule::HighAlpha => Ok(1.0 / beta_n),
        CutoffRule::MidLowAlpha => {
            let nf = n as f64;
            let t = nf.powf(1.5);
            let ratio = spec.m_of_t(t * nf.ln().powf(cut.eta))? / spec.m_of_t(t)?;
            Ok(ratio / beta_n)
        }
    }
}
