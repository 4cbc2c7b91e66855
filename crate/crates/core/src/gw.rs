//! Galton-Watson tree and forest samplers, the Łukasiewicz-walk dynamic
//! programs behind them, cycle-lemma machinery, and reproduction-law
//! transforms (exponential tilt, size-biasing, the giant-component
//! criterion).

use rand::Rng;
use thiserror::Error;

use crate::forest::{parse_forest, PlanarForest, PlanarTree};
use crate::law::ReproductionLaw;
use crate::prob::Weight;

#[derive(Debug, Error, PartialEq)]
pub enum GwError {
    #[error("population reached the vertex budget ({generated} vertices generated)")]
    BudgetExceeded { generated: usize },
    #[error("outdegrees sum to {actual}, expected {expected} for {k} trees")]
    BadSum {
        expected: u64,
        actual: u64,
        k: usize,
    },
    #[error("no forest with {k} trees and total size {n} has positive probability")]
    Infeasible { k: usize, n: usize },
    #[error("target mean {target} is outside the open range of attainable means")]
    Unreachable { target: f64 },
    #[error("law has zero mean")]
    ZeroMean,
}

/// A Galton-Watson forest with `k` ancestors conditioned to total size `n`.
#[derive(Debug, Clone)]
pub struct ConditionedForestSpec {
    pub law: ReproductionLaw<f64>,
    pub k: usize,
    pub n: usize,
}

/// Cumulative-table sampler for a float-mode reproduction law.
#[derive(Debug, Clone)]
pub struct LawSampler {
    values: Vec<u32>,
    cumulative: Vec<f64>,
}

impl LawSampler {
    pub fn new(law: &ReproductionLaw<f64>) -> Self {
        let mut cumulative = Vec::with_capacity(law.entries().len());
        let mut acc = 0.0;
        let mut values = Vec::with_capacity(law.entries().len());
        for (v, p) in law.entries() {
            acc += p;
            values.push(*v);
            cumulative.push(acc);
        }
        // guard the top against round-off
        if let Some(last) = cumulative.last_mut() {
            *last = f64::INFINITY;
        }
        Self { values, cumulative }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.gen();
        let ix = self
            .cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.cumulative.len() - 1);
        self.values[ix]
    }
}

/// Exact pmf of `ξ_1 + ... + ξ_n` by convolution powers; index `s` holds
/// `P(Σ = s)`. Runs in `O(n² · |support|)`, in either arithmetic mode.
pub fn walk_pmf<P: Weight>(law: &ReproductionLaw<P>, n: usize) -> Vec<P> {
    let mut pmf = vec![P::one()];
    for _ in 0..n {
        pmf = convolve_law(law, &pmf);
    }
    pmf
}

/// All convolution rows `0..=n` at once; row `m` is `walk_pmf(law, m)`.
pub fn walk_pmf_rows<P: Weight>(law: &ReproductionLaw<P>, n: usize) -> Vec<Vec<P>> {
    let mut rows = Vec::with_capacity(n + 1);
    rows.push(vec![P::one()]);
    for m in 0..n {
        let next = convolve_law(law, &rows[m]);
        rows.push(next);
    }
    rows
}

fn convolve_law<P: Weight>(law: &ReproductionLaw<P>, pmf: &[P]) -> Vec<P> {
    let max = law.max_value() as usize;
    let mut next = vec![P::zero(); pmf.len() + max];
    for (s, mass) in pmf.iter().enumerate() {
        if mass.is_zero() {
            continue;
        }
        for (v, p) in law.entries() {
            let t = s + *v as usize;
            next[t] = next[t].add(&mass.mul(p));
        }
    }
    next
}

/// Kemperman's first-passage formula: `P(T_k = n) = (k/n) P(Σξ_n = n-k)`.
pub fn first_passage_pmf<P: Weight>(law: &ReproductionLaw<P>, k: usize, n: usize) -> P {
    assert!(k >= 1 && k <= n, "need 1 <= k <= n");
    let pmf = walk_pmf(law, n);
    let s = n - k;
    if s >= pmf.len() {
        return P::zero();
    }
    P::from_ratio(k as u64, n as u64).mul(&pmf[s])
}

/// `P(T_k = n)` for all `n = 0..=max_n` in one pass.
pub fn first_passage_curve<P: Weight>(law: &ReproductionLaw<P>, k: usize, max_n: usize) -> Vec<P> {
    let mut curve = vec![P::zero(); max_n + 1];
    let mut pmf = vec![P::one()];
    for n in 1..=max_n {
        pmf = convolve_law(law, &pmf);
        if n >= k {
            let s = n - k;
            if s < pmf.len() {
                curve[n] = P::from_ratio(k as u64, n as u64).mul(&pmf[s]);
            }
        }
    }
    curve
}

/// The cyclic shifts of an outdegree sequence that encode a forest.
///
/// `outdegrees` must satisfy `Σ(y_i - 1) = -k`. Shift `r` moves the last
/// `r` entries to the front; the returned shifts are exactly those whose
/// rotated walk first hits `-k` at the final index. The cycle lemma
/// guarantees there are always exactly `k` of them.
pub fn valid_shifts(outdegrees: &[u32], k: usize) -> Result<Vec<usize>, GwError> {
    let n = outdegrees.len();
    let sum: u64 = outdegrees.iter().map(|&y| u64::from(y)).sum();
    if k == 0 || n == 0 || sum + k as u64 != n as u64 {
        return Err(GwError::BadSum {
            expected: (n as u64).saturating_sub(k as u64),
            actual: sum,
            k,
        });
    }
    // partial sums s[i] = S_i for i in 0..=n
    let mut s = Vec::with_capacity(n + 1);
    s.push(0i64);
    for &y in outdegrees {
        s.push(s.last().unwrap() + i64::from(y) - 1);
    }
    // A start index `a` is valid iff
    //   a = 0: S_i > -k for 1 <= i < n, or
    //   a > 0: S_a is a strict new minimum below 0 and
    //          S_i > S_a - k for a < i < n.
    // Suffix minima over S_1..S_{n-1}:
    let mut suffix_min = vec![i64::MAX; n + 1];
    for i in (1..n).rev() {
        suffix_min[i] = s[i].min(suffix_min[i + 1]);
    }
    let mut shifts = Vec::with_capacity(k);
    if suffix_min[1.min(n)] > -(k as i64) {
        shifts.push(0);
    }
    let mut running_min = i64::MAX;
    for a in 1..n {
        let strict_new_min = s[a] < 0 && s[a] < running_min;
        running_min = running_min.min(s[a]);
        if strict_new_min && suffix_min[a + 1] > s[a] - k as i64 {
            shifts.push((n - a) % n);
        }
    }
    shifts.sort_unstable();
    debug_assert_eq!(shifts.len(), k, "cycle lemma cardinality");
    Ok(shifts)
}

/// Rotate an outdegree sequence right by `shift` places.
pub fn rotate_right(outdegrees: &[u32], shift: usize) -> Vec<u32> {
    let n = outdegrees.len();
    let shift = shift % n;
    let mut out = Vec::with_capacity(n);
    out.extend_from_slice(&outdegrees[n - shift..]);
    out.extend_from_slice(&outdegrees[..n - shift]);
    out
}

/// Depth-first generation of one Galton-Watson tree: draw outdegrees until
/// the Łukasiewicz walk first returns to -1, failing with `BudgetExceeded`
/// once `cap` vertices have been generated with the population still open.
/// For a supercritical law this happens with probability `1 - q`, `q` the
/// extinction probability.
pub fn sample_tree<R: Rng + ?Sized>(
    law: &ReproductionLaw<f64>,
    rng: &mut R,
    cap: usize,
) -> Result<PlanarTree, GwError> {
    assert!(cap >= 1, "vertex budget must be positive");
    let sampler = LawSampler::new(law);
    sample_tree_with(&sampler, rng, cap)
}

/// As [`sample_tree`], reusing a prepared sampler.
pub fn sample_tree_with<R: Rng + ?Sized>(
    sampler: &LawSampler,
    rng: &mut R,
    cap: usize,
) -> Result<PlanarTree, GwError> {
    let mut outdegrees = Vec::new();
    let mut open = 1i64;
    while open > 0 {
        if outdegrees.len() == cap {
            return Err(GwError::BudgetExceeded { generated: cap });
        }
        let y = sampler.sample(rng);
        outdegrees.push(y);
        open += i64::from(y) - 1;
    }
    Ok(PlanarTree::new(outdegrees).expect("first-passage sequence is a tree"))
}

/// A free Galton-Watson forest: `k` independent trees.
pub fn sample_free_forest<R: Rng + ?Sized>(
    law: &ReproductionLaw<f64>,
    k: usize,
    rng: &mut R,
    cap: usize,
) -> Result<PlanarForest, GwError> {
    let sampler = LawSampler::new(law);
    let trees = (0..k)
        .map(|_| sample_tree_with(&sampler, rng, cap))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PlanarForest::from_trees(trees).expect("k >= 1"))
}

/// Below this conditional acceptance probability the conditioned sampler
/// switches from rejection to exact backward-DP sampling.
pub const REJECTION_ACCEPTANCE_THRESHOLD: f64 = 1e-3;

/// Prepared sampler for Galton-Watson forests conditioned on total size.
///
/// Draws `(y_1..y_n)` i.i.d. from the law conditioned on `Σy = n-k`
/// (rejection, or backward DP over the convolution table when the
/// acceptance probability drops below [`REJECTION_ACCEPTANCE_THRESHOLD`]),
/// then applies a uniformly chosen valid cyclic shift and splits the
/// result into trees.
pub struct ConditionedForestSampler {
    spec: ConditionedForestSpec,
    sampler: LawSampler,
    acceptance: f64,
    /// convolution rows kept only on the DP path
    rows: Option<Vec<Vec<f64>>>,
}

impl ConditionedForestSampler {
    pub fn new(spec: ConditionedForestSpec) -> Result<Self, GwError> {
        let ConditionedForestSpec { law, k, n } = &spec;
        assert!(*k >= 1 && *k <= *n, "need 1 <= k <= n");
        let rows = walk_pmf_rows(law, *n);
        let target = n - k;
        let acceptance = rows[*n].get(target).copied().unwrap_or(0.0);
        if acceptance <= 0.0 {
            return Err(GwError::Infeasible { k: *k, n: *n });
        }
        let keep_rows = acceptance < REJECTION_ACCEPTANCE_THRESHOLD;
        Ok(Self {
            sampler: LawSampler::new(law),
            rows: keep_rows.then_some(rows),
            acceptance,
            spec,
        })
    }

    /// `P(Σξ_n = n-k)`, the rejection acceptance probability.
    pub fn acceptance(&self) -> f64 {
        self.acceptance
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PlanarForest {
        let (n, k) = (self.spec.n, self.spec.k);
        let seq = match &self.rows {
            None => loop {
                let seq: Vec<u32> = (0..n).map(|_| self.sampler.sample(rng)).collect();
                let sum: u64 = seq.iter().map(|&y| u64::from(y)).sum();
                if sum == (n - k) as u64 {
                    break seq;
                }
            },
            Some(rows) => self.sample_by_dp(rng, rows),
        };
        let shifts = valid_shifts(&seq, k).expect("conditioned draw sums to n-k");
        let shift = shifts[rng.gen_range(0..shifts.len())];
        let rotated = rotate_right(&seq, shift);
        parse_forest(&rotated, k).expect("valid shift yields a forest code")
    }

    fn sample_by_dp<R: Rng + ?Sized>(&self, rng: &mut R, rows: &[Vec<f64>]) -> Vec<u32> {
        let (n, k) = (self.spec.n, self.spec.k);
        let mut remaining_sum = n - k;
        let mut seq = Vec::with_capacity(n);
        for i in 0..n {
            let len_rest = n - i - 1;
            let total = rows[len_rest + 1][remaining_sum];
            let u: f64 = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (v, p) in self.spec.law.entries() {
                let v_us = *v as usize;
                if v_us > remaining_sum {
                    break;
                }
                let w = rows[len_rest]
                    .get(remaining_sum - v_us)
                    .copied()
                    .unwrap_or(0.0);
                acc += p * w;
                if u < acc {
                    chosen = Some(*v);
                    break;
                }
            }
            // round-off guard: fall back to the largest feasible value
            let v = chosen.unwrap_or_else(|| {
                self.spec
                    .law
                    .entries()
                    .iter()
                    .rev()
                    .map(|(v, _)| *v)
                    .find(|&v| {
                        let v_us = v as usize;
                        v_us <= remaining_sum
                            && rows[len_rest]
                                .get(remaining_sum - v_us)
                                .copied()
                                .unwrap_or(0.0)
                                > 0.0
                    })
                    .expect("feasible continuation exists")
            });
            seq.push(v);
            remaining_sum -= v as usize;
        }
        seq
    }
}

/// Sample one conditioned forest; prefer [`ConditionedForestSampler`] when
/// drawing repeatedly from the same spec.
pub fn sample_forest_conditioned<R: Rng + ?Sized>(
    spec: &ConditionedForestSpec,
    rng: &mut R,
) -> Result<PlanarForest, GwError> {
    Ok(ConditionedForestSampler::new(spec.clone())?.sample(rng))
}

/// The member of the exponential family `μ̃(ℓ) ∝ μ(ℓ)θ^ℓ` with the given
/// mean, found by bisection on `log θ` (the mean is strictly increasing in
/// `θ`). Returns the tilted law together with `θ`.
pub fn exponential_tilt(
    law: &ReproductionLaw<f64>,
    target_mean: f64,
) -> Result<(ReproductionLaw<f64>, f64), GwError> {
    let lo_v = law.min_value() as f64;
    let hi_v = law.max_value() as f64;
    if law.entries().len() < 2 || !(target_mean > lo_v && target_mean < hi_v) {
        return Err(GwError::Unreachable {
            target: target_mean,
        });
    }
    let mean_at = |t: f64| -> f64 {
        // weights exp(t·ℓ + log μ(ℓ)), stabilized by the largest exponent
        let m = law
            .entries()
            .iter()
            .map(|(v, p)| t * f64::from(*v) + p.ln())
            .fold(f64::NEG_INFINITY, f64::max);
        let mut num = 0.0;
        let mut den = 0.0;
        for (v, p) in law.entries() {
            let w = (t * f64::from(*v) + p.ln() - m).exp();
            num += f64::from(*v) * w;
            den += w;
        }
        num / den
    };
    let (mut lo, mut hi) = (-60.0f64, 60.0f64);
    if mean_at(lo) > target_mean || mean_at(hi) < target_mean {
        return Err(GwError::Unreachable {
            target: target_mean,
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid) < target_mean {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    let m = law
        .entries()
        .iter()
        .map(|(v, p)| t * f64::from(*v) + p.ln())
        .fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<(u32, f64)> = law
        .entries()
        .iter()
        .map(|(v, p)| (*v, (t * f64::from(*v) + p.ln() - m).exp()))
        .collect();
    let z: f64 = weights.iter().map(|(_, w)| w).sum();
    let tilted =
        ReproductionLaw::from_entries(weights.into_iter().map(|(v, w)| (v, w / z)).collect())
            .expect("tilted weights form a law");
    if (tilted.mean() - target_mean).abs() > 1e-10 {
        return Err(GwError::Unreachable {
            target: target_mean,
        });
    }
    Ok((tilted, t.exp()))
}

/// Size-biased offspring law `ν(ℓ) = (ℓ+1)μ(ℓ+1)/m`; the reproduction law
/// of the cluster of a uniformly chosen arm in the configuration model.
pub fn size_biased<P: Weight>(law: &ReproductionLaw<P>) -> Result<ReproductionLaw<P>, GwError> {
    let m = law.mean();
    if m.is_zero() {
        return Err(GwError::ZeroMean);
    }
    let entries = law
        .entries()
        .iter()
        .filter(|(v, _)| *v >= 1)
        .map(|(v, p)| (*v - 1, P::from_count(u64::from(*v)).mul(p).div(&m)))
        .collect();
    Ok(ReproductionLaw::from_entries(entries).expect("size-biased masses sum to one"))
}

/// The giant-component criterion `Σ ℓ(ℓ-2)μ(ℓ)`: nonpositive exactly when
/// the configuration model has no giant component.
pub fn molloy_reed_criterion<P: Weight>(law: &ReproductionLaw<P>) -> P {
    let mut acc = P::zero();
    for (v, p) in law.entries() {
        let v = u64::from(*v);
        if v >= 2 {
            acc = acc.add(&P::from_count(v * (v - 2)).mul(p));
        } else if v == 1 {
            acc = acc.sub(p);
        }
    }
    acc
}
