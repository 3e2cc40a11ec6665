//! Block schedules: block lengths `b_1, b_2, ...`, their prefix sums `mu_k`
//! and the n-block aggregates `lambda_k`, plus the logarithmic growth bounds
//! under which each protocol still converges.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which protocol's growth bound on `lambda_k` applies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum Regime {
    /// Ordinary consensus with every positive weight at least `alpha`:
    /// `lambda_k <= -ln(k + T) / ln(alpha)`.
    Ordinary { alpha: f64 },
    /// `lambda_k <= ln(k + T) / (2 ln n)`.
    PushSum,
    /// `lambda_k <= ln(k + T) / (6 ln n)`.
    Robust,
}

impl Regime {
    pub fn validate(&self) -> Result<()> {
        if let Regime::Ordinary { alpha } = *self {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::InvalidParameter {
                    name: "alpha",
                    reason: format!("must lie in (0, 1), got {alpha}"),
                });
            }
        }
        Ok(())
    }

    /// Right-hand side of the growth condition at index `k`.
    pub fn bound(&self, k: u64, t: u64, n: usize) -> f64 {
        let log = ((k as f64) + (t as f64)).ln();
        match *self {
            Regime::Ordinary { alpha } => -log / alpha.ln(),
            Regime::PushSum => log / (2.0 * (n as f64).ln()),
            Regime::Robust => log / (6.0 * (n as f64).ln()),
        }
    }

    /// Smallest `k >= 1` whose bound admits `lambda_k = n` (all blocks of
    /// length one). Saturates at `u64::MAX`.
    ///
    /// Since every block has length at least one, `lambda_k >= n` always, so
    /// no schedule meets the bound before this index.
    pub fn first_admissible_k(&self, t: u64, n: usize) -> u64 {
        let scale = match *self {
            Regime::Ordinary { alpha } => -alpha.ln(),
            Regime::PushSum => 2.0 * (n as f64).ln(),
            Regime::Robust => 6.0 * (n as f64).ln(),
        };
        // bound(k) >= n  <=>  k + T >= exp(n * scale)
        let needed = (n as f64 * scale).exp();
        let mut k = (needed - t as f64).ceil().max(1.0);
        if k >= u64::MAX as f64 {
            return u64::MAX;
        }
        // guard the closed form against rounding at the boundary
        while k > 1.0 && self.bound(k as u64 - 1, t, n) >= n as f64 {
            k -= 1.0;
        }
        while self.bound(k as u64, t, n) < n as f64 {
            k += 1.0;
        }
        k as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSchedule {
    n: usize,
    blocks: Vec<usize>,
}

impl BlockSchedule {
    /// `n` is the aggregation factor of `lambda` (the node count).
    pub fn new(n: usize, blocks: Vec<usize>) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        if let Some(pos) = blocks.iter().position(|&b| b == 0) {
            return Err(Error::InvalidParameter {
                name: "blocks",
                reason: format!("block {} has length 0", pos + 1),
            });
        }
        Ok(BlockSchedule { n, blocks })
    }

    /// All blocks of length `len`.
    pub fn constant(n: usize, len: usize, count: usize) -> Result<Self> {
        Self::new(n, vec![len; count])
    }

    /// `b_k = ratio^k`, saturating at `cap`.
    pub fn geometric(n: usize, ratio: usize, count: usize, cap: usize) -> Result<Self> {
        let mut blocks = Vec::with_capacity(count);
        let mut b = 1usize;
        for _ in 0..count {
            b = b.saturating_mul(ratio).min(cap).max(1);
            blocks.push(b);
        }
        Self::new(n, blocks)
    }

    /// `b_k = k`.
    pub fn linear(n: usize, count: usize) -> Result<Self> {
        Self::new(n, (1..=count).collect())
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// `b_1, b_2, ...` (index 0 holds `b_1`).
    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// `mu_k = b_1 + ... + b_k`, `mu_0 = 0`.
    pub fn mu(&self, k: usize) -> Result<usize> {
        if k > self.blocks.len() {
            return Err(Error::ScheduleTooShort {
                needed: k,
                available: self.blocks.len(),
            });
        }
        Ok(self.blocks[..k].iter().sum())
    }

    /// `lambda_k = mu_{kn} - mu_{(k-1)n}`, `lambda_0 = 0`.
    pub fn lambda(&self, k: usize) -> Result<usize> {
        if k == 0 {
            return Ok(0);
        }
        let hi = k * self.n;
        if hi > self.blocks.len() {
            return Err(Error::ScheduleTooShort {
                needed: hi,
                available: self.blocks.len(),
            });
        }
        Ok(self.blocks[hi - self.n..hi].iter().sum())
    }

    /// Number of complete lambda-groups (`n` consecutive blocks).
    pub fn lambda_count(&self) -> usize {
        self.blocks.len() / self.n
    }

    /// Total number of iterations covered by all blocks.
    pub fn total_iterations(&self) -> usize {
        self.blocks.iter().sum()
    }

    /// Block boundaries `mu_0, mu_1, ..., mu_len`.
    pub fn boundaries(&self) -> Vec<usize> {
        let mut acc = 0;
        std::iter::once(0)
            .chain(self.blocks.iter().map(|b| {
                acc += b;
                acc
            }))
            .collect()
    }

    /// Lambda-group boundaries `mu_0, mu_n, mu_{2n}, ...`.
    pub fn lambda_boundaries(&self) -> Vec<usize> {
        self.boundaries().into_iter().step_by(self.n).collect()
    }

    /// Index `k` (0-based) of the block containing `iteration`.
    pub fn block_of(&self, iteration: usize) -> Option<usize> {
        let mut end = 0;
        for (k, b) in self.blocks.iter().enumerate() {
            end += b;
            if iteration < end {
                return Some(k);
            }
        }
        None
    }
}

/// True iff `lambda_k <= bound(k)` for every `k` in `K..=horizon`.
///
/// The growth condition is stated for all `k >= K`; only the finite horizon
/// can be checked.
pub fn check_lambda_bound(
    s: &BlockSchedule,
    regime: Regime,
    k_start: u64,
    t: u64,
    horizon: u64,
) -> Result<bool> {
    regime.validate()?;
    if k_start == 0 {
        return Err(Error::InvalidParameter {
            name: "K",
            reason: "must be >= 1".into(),
        });
    }
    for k in k_start..=horizon {
        let lambda = s.lambda(k as usize)?;
        if lambda as f64 > regime.bound(k, t, s.n) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Schedule that grows as fast as the regime bound allows:
/// `b_k = max(1, floor(bound(ceil(k / n)) / n))`.
///
/// The `n` blocks of lambda-group `l` share one length, so
/// `lambda_l = n * b = max(n, n * floor(bound(l) / n)) <= bound(l)` as soon as
/// `bound(l) >= n`, i.e. for every `l >= regime.first_admissible_k(T, n)`.
pub fn logarithmic_b_sequence(
    n: usize,
    regime: Regime,
    t: u64,
    count: usize,
) -> Result<BlockSchedule> {
    if n < 2 {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: format!("need at least 2 nodes, got {n}"),
        });
    }
    if count == 0 {
        return Err(Error::InvalidParameter {
            name: "count",
            reason: "must be positive".into(),
        });
    }
    regime.validate()?;
    let blocks = (1..=count)
        .map(|k| {
            let group = k.div_ceil(n) as u64;
            let per_block = (regime.bound(group, t, n) / n as f64).floor();
            if per_block >= 1.0 {
                per_block as usize
            } else {
                1
            }
        })
        .collect();
    BlockSchedule::new(n, blocks)
}
