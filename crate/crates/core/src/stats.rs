//! Monte Carlo experiments and statistical tests: the empirical tree
//! measure and its convergence, pair factorization, tree counts, exact
//! ratio-limit evaluation, the supercritical regime, and the
//! configuration-model comparison.
//!
//! Every experiment is deterministic given its parameters and seed: each
//! replica runs on its own ChaCha8 stream, replicas are collected in index
//! order regardless of thread scheduling, and aggregation is sequential.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::forest::{tree_probability, LabeledForest, PlanarForest, PlanarTree};
use crate::gw::{
    exponential_tilt, molloy_reed_criterion, sample_tree_with, size_biased, GwError, LawSampler,
};
use crate::law::{Criticality, ReproductionLaw};
use crate::sim::{
    sample_conditioned_arms_with_budget, simulate_shape, simulate_terminal, SimError,
    DEFAULT_REJECTION_BUDGET,
};

/// Identifier of the generator backing all replicas, recorded in reports.
pub const RNG_ID: &str = "chacha8";

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("law violates the experiment hypothesis: {detail}")]
    HypothesisViolated { detail: String },
    #[error(
        "law support has period {period} after recentering; ratio limits need an aperiodic walk"
    )]
    PeriodicSupport { period: u64 },
    #[error("chi-square pooling left {cells} cell(s); need at least 2")]
    DegenerateCells { cells: usize },
    #[error("law puts no mass on positive arm counts; a uniform arm does not exist")]
    NoArms,
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Gw(#[from] GwError),
}

/// Counts of tree shapes among the trees of one or more terminal states.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    counts: BTreeMap<String, u64>,
    total: u64,
}

impl EmpiricalMeasure {
    /// Count the tree shapes of a terminal state, one entry per tree.
    pub fn from_terminal(terminal: &LabeledForest) -> Self {
        Self::from_shape(terminal.shape())
    }

    pub fn from_shape(shape: &PlanarForest) -> Self {
        let mut m = Self::default();
        for tree in shape.trees() {
            m.record(tree);
        }
        m
    }

    pub fn record(&mut self, tree: &PlanarTree) {
        *self.counts.entry(tree.to_string()).or_default() += 1;
        self.total += 1;
    }

    pub fn merge(&mut self, other: &Self) {
        for (key, c) in &other.counts {
            *self.counts.entry(key.clone()).or_default() += c;
        }
        self.total += other.total;
    }

    pub fn counts(&self) -> &BTreeMap<String, u64> {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count_of(&self, tree: &PlanarTree) -> u64 {
        self.counts.get(&tree.to_string()).copied().unwrap_or(0)
    }

    /// Proportion of trees equal to `tree`; 0 when the state is empty.
    pub fn proportion(&self, tree: &PlanarTree) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.count_of(tree) as f64 / self.total as f64
    }

    /// Normalized proportions; they sum to 1 whenever `total > 0`.
    pub fn proportions(&self) -> BTreeMap<String, f64> {
        self.counts
            .iter()
            .map(|(k, &c)| (k.clone(), c as f64 / self.total as f64))
            .collect()
    }
}

/// One scalar statistic of an experiment at one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub n: u64,
    pub statistic: String,
    pub value: f64,
    pub std_error: Option<f64>,
}

/// Outcome of one named pass/fail criterion inside a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Reproducible experiment output: parameters, per-configuration estimates
/// with Monte Carlo standard errors, and pass/fail flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub law: String,
    pub seed: u64,
    pub reps: u64,
    pub n_values: Vec<u64>,
    pub rng: String,
    pub extra: BTreeMap<String, String>,
    pub rows: Vec<ReportRow>,
    pub checks: Vec<CheckOutcome>,
}

impl ExperimentReport {
    pub fn new(
        experiment: &str,
        law_text: String,
        seed: u64,
        reps: u64,
        n_values: Vec<u64>,
    ) -> Self {
        Self {
            experiment: experiment.to_owned(),
            law: law_text,
            seed,
            reps,
            n_values,
            rng: RNG_ID.to_owned(),
            extra: BTreeMap::new(),
            rows: Vec::new(),
            checks: Vec::new(),
        }
    }

    pub fn push_row(&mut self, n: u64, statistic: &str, value: f64, std_error: Option<f64>) {
        self.rows.push(ReportRow {
            n,
            statistic: statistic.to_owned(),
            value,
            std_error,
        });
    }

    pub fn push_check(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(CheckOutcome {
            name: name.to_owned(),
            passed,
            detail,
        });
    }

    /// True when every recorded check passed.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Rows carrying the given statistic, in configuration order.
    pub fn series(&self, statistic: &str) -> Vec<&ReportRow> {
        self.rows
            .iter()
            .filter(|r| r.statistic == statistic)
            .collect()
    }

    /// Deterministic JSON artifact.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Flat CSV artifact: one row per `(n, statistic)`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,statistic,value,std_error\n");
        for r in &self.rows {
            let se = r.std_error.map(|s| s.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{}", r.n, r.statistic, r.value, se);
        }
        out
    }

    /// Plot-ready two-column series `(n, value)` keyed by statistic name.
    pub fn plot_curves(&self) -> BTreeMap<String, Vec<(u64, f64)>> {
        let mut curves: BTreeMap<String, Vec<(u64, f64)>> = BTreeMap::new();
        for r in &self.rows {
            curves
                .entry(r.statistic.clone())
                .or_default()
                .push((r.n, r.value));
        }
        curves
    }
}

/// Run `reps` replicas on streams `stream_base..stream_base+reps` of the
/// seeded generator, in parallel, collecting results in replica order so
/// aggregation never depends on scheduling.
fn run_replicas<T, F>(seed: u64, stream_base: u64, reps: u64, f: F) -> Result<Vec<T>, StatsError>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng) -> Result<T, StatsError> + Sync,
{
    (0..reps)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream_base + i);
            f(&mut rng)
        })
        .collect()
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn freq_and_se(hits: u64, reps: u64) -> (f64, f64) {
    let p = hits as f64 / reps as f64;
    (p, (p * (1.0 - p) / reps as f64).sqrt())
}

/// Total variation distance `(1/2) Σ |p - q|` over the union of supports.
pub fn tv_distance<K: Ord>(p: &BTreeMap<K, f64>, q: &BTreeMap<K, f64>) -> f64 {
    let mut acc = 0.0;
    for (k, pv) in p {
        acc += (pv - q.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, qv) in q {
        if !p.contains_key(k) {
            acc += qv.abs();
        }
    }
    acc / 2.0
}

/// Normalize counts into an empirical law.
pub fn empirical_law<K: Ord + Clone>(counts: &BTreeMap<K, u64>) -> BTreeMap<K, f64> {
    let total: u64 = counts.values().sum();
    counts
        .iter()
        .map(|(k, &c)| (k.clone(), c as f64 / total as f64))
        .collect()
}

/// Result of a Pearson goodness-of-fit test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub p_value: f64,
    pub dof: usize,
    /// number of cells after pooling
    pub cells: usize,
}

/// Expected-count pooling threshold for chi-square cells.
pub const CHI_SQUARE_POOL_THRESHOLD: f64 = 5.0;

/// Pearson chi-square of observed counts against an expected law.
///
/// `expected` maps cells to probabilities; mass it does not account for
/// forms an implicit tail cell, and cells with expected count below
/// [`CHI_SQUARE_POOL_THRESHOLD`] are pooled into that tail. Degrees of
/// freedom are `cells - 1`.
pub fn chi_square_test<K: Ord + Clone>(
    observed: &BTreeMap<K, u64>,
    expected: &BTreeMap<K, f64>,
    total: u64,
) -> Result<ChiSquare, StatsError> {
    let t = total as f64;
    let mut kept: Vec<(f64, u64)> = Vec::new();
    let mut tail_expected: f64 = 1.0 - expected.values().sum::<f64>();
    let mut tail_observed: u64 = total;
    for (key, &p) in expected {
        let obs = observed.get(key).copied().unwrap_or(0);
        if p * t >= CHI_SQUARE_POOL_THRESHOLD {
            kept.push((p, obs));
            tail_observed -= obs;
        } else {
            tail_expected += p;
        }
    }
    tail_expected = tail_expected.max(0.0);
    // round-off in the expected masses can leave a phantom tail; only a
    // tail with real mass (or real observations) counts as a cell
    let has_tail = tail_observed > 0 || tail_expected * t > 1e-6;
    let cells = kept.len() + usize::from(has_tail);
    if cells < 2 {
        return Err(StatsError::DegenerateCells { cells });
    }
    let mut statistic = 0.0;
    for (p, obs) in &kept {
        let e = p * t;
        statistic += (*obs as f64 - e).powi(2) / e;
    }
    if has_tail {
        let e = tail_expected * t;
        if e == 0.0 {
            // observed mass where none was expected
            return Ok(ChiSquare {
                statistic: f64::INFINITY,
                p_value: 0.0,
                dof: cells - 1,
                cells,
            });
        }
        statistic += (tail_observed as f64 - e).powi(2) / e;
    }
    let dof = cells - 1;
    let dist = ChiSquared::new(dof as f64).expect("dof >= 1");
    let p_value = dist.sf(statistic).clamp(0.0, 1.0);
    Ok(ChiSquare {
        statistic,
        p_value,
        dof,
        cells,
    })
}

fn require_critical_or_subcritical(law: &ReproductionLaw<f64>) -> Result<(), StatsError> {
    if law.criticality() == Criticality::Supercritical {
        return Err(StatsError::HypothesisViolated {
            detail: format!("mean {} exceeds 1", law.mean()),
        });
    }
    if law.prob(0) == 0.0 {
        return Err(StatsError::HypothesisViolated {
            detail: "law puts no mass at 0".into(),
        });
    }
    Ok(())
}

/// Convergence of the empirical tree measure: for each `n`, the mean
/// squared deviation of the proportion of trees equal to `t` from the
/// Galton-Watson tree probability, under conditioned i.i.d. arms.
pub fn theorem2_experiment(
    law: &ReproductionLaw<f64>,
    t: &PlanarTree,
    n_list: &[usize],
    reps: u64,
    seed: u64,
) -> Result<ExperimentReport, StatsError> {
    require_critical_or_subcritical(law)?;
    let target = tree_probability(law, t);
    let mut report = ExperimentReport::new(
        "theorem2",
        law.render(),
        seed,
        reps,
        n_list.iter().map(|&n| n as u64).collect(),
    );
    report.extra.insert("tree".into(), t.to_string());
    report
        .extra
        .insert("target_probability".into(), target.to_string());

    for (ci, &n) in n_list.iter().enumerate() {
        let stream_base = (ci as u64) << 32;
        let outcomes = run_replicas(seed, stream_base, reps, |rng| {
            let (arms, attempts) =
                sample_conditioned_arms_with_budget(law, n, rng, DEFAULT_REJECTION_BUDGET)?;
            let shape = simulate_shape(&arms, rng)?;
            let measure = EmpiricalMeasure::from_shape(&shape);
            let dev = measure.proportion(t) - target;
            Ok((dev * dev, attempts))
        })?;
        let sq: Vec<f64> = outcomes.iter().map(|(d, _)| *d).collect();
        let (mse, se) = mean_and_se(&sq);
        report.push_row(n as u64, "mean_sq_deviation", mse, Some(se));
        let attempts: u64 = outcomes.iter().map(|(_, a)| *a).sum();
        report.push_row(
            n as u64,
            "conditioning_acceptance",
            reps as f64 / attempts as f64,
            None,
        );
    }

    let series: Vec<(f64, f64)> = report
        .series("mean_sq_deviation")
        .iter()
        .map(|r| (r.value, r.std_error.unwrap_or(0.0)))
        .collect();
    let mut monotone = true;
    let mut detail = String::new();
    for pair in series.windows(2) {
        let (a, sa) = pair[0];
        let (b, sb) = pair[1];
        let slack = 2.0 * (sa * sa + sb * sb).sqrt();
        if b > a + slack {
            monotone = false;
            let _ = write!(detail, "{b} > {a} + {slack}; ");
        }
    }
    report.push_check(
        "mean_sq_deviation_nonincreasing",
        monotone,
        if monotone {
            "squared deviations decrease along n (within 2 pooled SE)".into()
        } else {
            detail
        },
    );
    Ok(report)
}

/// Joint law of the two leftmost trees: estimates
/// `P(τ_1 = t1, τ_2 = t2, k(n) >= 3)` and compares it with the product of
/// the two tree probabilities.
pub fn pair_factorization_experiment(
    law: &ReproductionLaw<f64>,
    t1: &PlanarTree,
    t2: &PlanarTree,
    n: usize,
    reps: u64,
    seed: u64,
) -> Result<ExperimentReport, StatsError> {
    require_critical_or_subcritical(law)?;
    let target = tree_probability(law, t1) * tree_probability(law, t2);
    let mut report = ExperimentReport::new(
        "pair_factorization",
        law.render(),
        seed,
        reps,
        vec![n as u64],
    );
    report.extra.insert("t1".into(), t1.to_string());
    report.extra.insert("t2".into(), t2.to_string());
    report
        .extra
        .insert("target_product".into(), target.to_string());

    let outcomes = run_replicas(seed, 0, reps, |rng| {
        let (arms, _) = sample_conditioned_arms_with_budget(law, n, rng, DEFAULT_REJECTION_BUDGET)?;
        let terminal = simulate_terminal(&arms, rng)?;
        let trees = terminal.shape().trees();
        if trees.len() < 3 {
            return Ok((false, false));
        }
        Ok((
            &trees[0] == t1 && &trees[1] == t2,
            &trees[0] == t2 && &trees[1] == t1,
        ))
    })?;
    let hits12 = outcomes.iter().filter(|(a, _)| *a).count() as u64;
    let hits21 = outcomes.iter().filter(|(_, b)| *b).count() as u64;
    let (p12, se12) = freq_and_se(hits12, reps);
    let (p21, se21) = freq_and_se(hits21, reps);
    report.push_row(n as u64, "joint_estimate", p12, Some(se12));
    report.push_row(n as u64, "joint_estimate_swapped", p21, Some(se21));

    let tol12 = 3.0 * se12;
    report.push_check(
        "joint_matches_product",
        (p12 - target).abs() <= tol12,
        format!("|{p12} - {target}| vs 3·SE = {tol12}"),
    );
    let pooled = 3.0 * (se12 * se12 + se21 * se21).sqrt();
    report.push_check(
        "orders_agree_by_exchangeability",
        (p12 - p21).abs() <= pooled,
        format!("|{p12} - {p21}| vs {pooled}"),
    );
    Ok(report)
}

/// Distribution of the number of trees: `P_n(k(n) >= K)` over a grid of
/// `K`, and `k(n)/n` against `1 - m` for subcritical laws.
pub fn tree_count_experiment(
    law: &ReproductionLaw<f64>,
    n_list: &[usize],
    reps: u64,
    seed: u64,
    k_grid: &[u64],
) -> Result<ExperimentReport, StatsError> {
    require_critical_or_subcritical(law)?;
    let mut report = ExperimentReport::new(
        "tree_count",
        law.render(),
        seed,
        reps,
        n_list.iter().map(|&n| n as u64).collect(),
    );
    if law.criticality() == Criticality::Subcritical {
        report
            .extra
            .insert("one_minus_mean".into(), (1.0 - law.mean()).to_string());
    }

    for (ci, &n) in n_list.iter().enumerate() {
        let stream_base = (ci as u64) << 32;
        let ks = run_replicas(seed, stream_base, reps, |rng| {
            let (arms, _) =
                sample_conditioned_arms_with_budget(law, n, rng, DEFAULT_REJECTION_BUDGET)?;
            Ok(arms.tree_count() as u64)
        })?;
        for &cutoff in k_grid {
            let hits = ks.iter().filter(|&&k| k >= cutoff).count() as u64;
            let (p, se) = freq_and_se(hits, reps);
            report.push_row(n as u64, &format!("p_k_ge_{cutoff}"), p, Some(se));
        }
        let fractions: Vec<f64> = ks.iter().map(|&k| k as f64 / n as f64).collect();
        let (mean, se) = mean_and_se(&fractions);
        report.push_row(n as u64, "tree_count_over_n", mean, Some(se));
    }

    // the count diverges: each tail probability is nondecreasing along n
    for &cutoff in k_grid {
        let series: Vec<(f64, f64)> = report
            .series(&format!("p_k_ge_{cutoff}"))
            .iter()
            .map(|r| (r.value, r.std_error.unwrap_or(0.0)))
            .collect();
        let mut ok = true;
        for pair in series.windows(2) {
            let slack = 2.0 * (pair[0].1.powi(2) + pair[1].1.powi(2)).sqrt();
            if pair[1].0 + slack < pair[0].0 {
                ok = false;
            }
        }
        report.push_check(
            &format!("p_k_ge_{cutoff}_nondecreasing"),
            ok,
            "tail probability grows along n (within 2 pooled SE)".into(),
        );
    }
    Ok(report)
}

/// Exact ratio-limit evaluation: `P(Σξ <= n-ℓ) / P(Σξ <= n)` for each `n`,
/// computed by dynamic programming with no Monte Carlo noise. Requires a
/// critical law whose recentered support is aperiodic.
pub fn ratio_limit_check(
    law: &ReproductionLaw<f64>,
    n_list: &[usize],
    ell: usize,
) -> Result<ExperimentReport, StatsError> {
    if law.criticality() != Criticality::Critical {
        return Err(StatsError::HypothesisViolated {
            detail: format!("mean {} is not 1", law.mean()),
        });
    }
    let period = support_period(law);
    if period != 1 {
        return Err(StatsError::PeriodicSupport { period });
    }
    let mut report = ExperimentReport::new(
        "ratio_limit",
        law.render(),
        0,
        0,
        n_list.iter().map(|&n| n as u64).collect(),
    );
    report.extra.insert("ell".into(), ell.to_string());
    report.extra.insert("mode".into(), "exact_dp".into());

    let &max_n = n_list.iter().max().expect("nonempty n list");
    // one forward convolution pass, snapshotting tails at requested sizes
    let mut pmf: Vec<f64> = vec![1.0];
    let mut wanted: BTreeMap<usize, ()> = n_list.iter().map(|&n| (n, ())).collect();
    let mut ratios: BTreeMap<usize, (f64, f64, f64)> = BTreeMap::new();
    for m in 1..=max_n {
        pmf = convolve_f64(law, &pmf);
        if wanted.remove(&m).is_some() {
            let tail_to =
                |limit: usize| -> f64 { pmf.iter().take(limit + 1).sum::<f64>().min(1.0) };
            let den = tail_to(m);
            let num = tail_to(m.saturating_sub(ell));
            ratios.insert(m, (num / den, num, den));
        }
    }
    for &n in n_list {
        let (ratio, num, den) = ratios[&n];
        report.push_row(n as u64, "ratio", ratio, None);
        report.push_row(n as u64, "p_le_n_minus_ell", num, None);
        report.push_row(n as u64, "p_le_n", den, None);
    }
    let series: Vec<f64> = report.series("ratio").iter().map(|r| r.value).collect();
    let monotone = series.windows(2).all(|w| w[1] >= w[0]);
    let below_one = series.iter().all(|&r| r <= 1.0 + 1e-12);
    report.push_check(
        "ratio_monotone_toward_one",
        monotone && below_one,
        format!("ratios {series:?}"),
    );
    Ok(report)
}

fn convolve_f64(law: &ReproductionLaw<f64>, pmf: &[f64]) -> Vec<f64> {
    let max = law.max_value() as usize;
    let mut next = vec![0.0; pmf.len() + max];
    for (s, &mass) in pmf.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        for (v, p) in law.entries() {
            next[s + *v as usize] += mass * p;
        }
    }
    next
}

/// Period of the recentered support: gcd of the gaps between support
/// values. 1 means the walk `Σξ - n` is aperiodic; 0 marks a degenerate
/// single-point support whose walk never moves.
pub fn support_period(law: &ReproductionLaw<f64>) -> u64 {
    if law.entries().len() < 2 {
        return 0;
    }
    let min = law.min_value();
    law.support().map(|v| u64::from(v - min)).fold(0, gcd)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Supercritical regime: the exact law of `k(n)` conditioned on
/// `k(n) >= 1` (computed by DP, since rejection is hopeless for large n)
/// with a fitted geometric parameter, plus a Monte Carlo check that the
/// grabbing system under the tilted law has `k(n)/n ≈ c`.
pub fn supercritical_k_experiment(
    law: &ReproductionLaw<f64>,
    n: usize,
    reps: u64,
    seed: u64,
    tilt_c: f64,
) -> Result<ExperimentReport, StatsError> {
    if law.criticality() != Criticality::Supercritical {
        return Err(StatsError::HypothesisViolated {
            detail: format!("mean {} is not above 1", law.mean()),
        });
    }
    if law.prob(0) == 0.0 {
        return Err(StatsError::HypothesisViolated {
            detail: "law puts no mass at 0".into(),
        });
    }
    let mut report =
        ExperimentReport::new("supercritical_k", law.render(), seed, reps, vec![n as u64]);
    report.extra.insert("tilt_c".into(), tilt_c.to_string());

    // exact part: pmf of k(n) = n - Σξ on {1..n}, conditioned on k >= 1
    let pmf = crate::gw::walk_pmf(law, n);
    let acceptance: f64 = (0..n).map(|s| pmf.get(s).copied().unwrap_or(0.0)).sum();
    report.push_row(n as u64, "p_k_ge_1", acceptance, None);
    let cond: Vec<(u64, f64)> = (1..=n)
        .filter_map(|j| {
            let mass = pmf.get(n - j).copied().unwrap_or(0.0) / acceptance;
            (mass > 0.0).then_some((j as u64, mass))
        })
        .collect();
    let mean_k: f64 = cond.iter().map(|(j, p)| *j as f64 * p).sum();
    report.push_row(n as u64, "k_cond_mean", mean_k, None);
    for (j, p) in cond.iter().take(12) {
        report.push_row(n as u64, &format!("p_k_eq_{j}_given_ge_1"), *p, None);
    }
    // fit a geometric on the support lattice of k(n): for a lattice law
    // the conditional pmf lives on k_min, k_min+d, k_min+2d, ...
    let k_min = cond.first().map(|(j, _)| *j).unwrap_or(1);
    let step = cond.iter().map(|(j, _)| j - k_min).fold(0, gcd).max(1);
    let mean_index: f64 = cond
        .iter()
        .map(|(j, p)| ((j - k_min) / step) as f64 * p)
        .sum();
    let rho = mean_index / (1.0 + mean_index);
    report.push_row(n as u64, "geometric_ratio_fit", rho, None);
    report.push_row(n as u64, "geometric_step", step as f64, None);
    // goodness of that fit, as total variation
    let cond_map: BTreeMap<u64, f64> = cond.iter().copied().collect();
    let geom: BTreeMap<u64, f64> = cond
        .iter()
        .map(|(j, _)| {
            let i = ((j - k_min) / step) as i32;
            (*j, (1.0 - rho) * rho.powi(i))
        })
        .collect();
    report.push_row(
        n as u64,
        "geometric_fit_tv",
        tv_distance(&cond_map, &geom),
        None,
    );

    // observational tilted check: under the tilted law with mean 1-c, the
    // grabbing system has k(n)/n concentrating at c
    let (tilted, theta) = exponential_tilt(law, 1.0 - tilt_c)?;
    report.extra.insert("tilt_theta".into(), theta.to_string());
    report.extra.insert("tilted_law".into(), tilted.render());
    let fractions = run_replicas(seed, 0, reps, |rng| {
        let (arms, _) =
            sample_conditioned_arms_with_budget(&tilted, n, rng, DEFAULT_REJECTION_BUDGET)?;
        Ok(arms.tree_count() as f64 / n as f64)
    })?;
    let (mean, se) = mean_and_se(&fractions);
    report.push_row(n as u64, "tilted_k_over_n", mean, Some(se));
    report.push_check(
        "tilted_k_over_n_matches_c",
        (mean - tilt_c).abs() <= 4.0 * se,
        format!("|{mean} - {tilt_c}| vs 4·SE = {}", 4.0 * se),
    );
    Ok(report)
}

/// Configuration-model comparison: the cluster of a uniformly chosen arm
/// against two independent size-biased Galton-Watson trees joined by an
/// edge, plus the contrast with a uniformly chosen grabbing-system cluster.
pub fn config_model_cluster_experiment(
    law: &ReproductionLaw<f64>,
    n: usize,
    reps: u64,
    seed: u64,
    tv_threshold: f64,
) -> Result<ExperimentReport, StatsError> {
    if law.max_value() == 0 {
        return Err(StatsError::NoArms);
    }
    let criterion = molloy_reed_criterion(law);
    let nu = size_biased(law)?;
    let mut report = ExperimentReport::new(
        "config_model_cluster",
        law.render(),
        seed,
        reps,
        vec![n as u64],
    );
    report
        .extra
        .insert("molloy_reed_criterion".into(), criterion.to_string());
    report.extra.insert("size_biased_law".into(), nu.render());
    if criterion > 0.0 {
        report
            .extra
            .insert("giant_component_warning".into(), "true".into());
    }
    report.push_row(n as u64, "molloy_reed_criterion", criterion, None);

    // side 1: cluster size of a uniform arm in the configuration model
    let degree_sampler = LawSampler::new(law);
    let config_sizes = run_replicas(seed, 0, reps, |rng| {
        Ok(config_cluster_of_uniform_arm(&degree_sampler, n, rng))
    })?;
    let mut resamples: u64 = 0;
    let mut config_counts: BTreeMap<u64, u64> = BTreeMap::new();
    for (size, odd_resamples) in &config_sizes {
        *config_counts.entry(*size).or_default() += 1;
        resamples += odd_resamples;
    }
    report.push_row(
        n as u64,
        "odd_stub_resamples_per_rep",
        resamples as f64 / reps as f64,
        None,
    );

    // side 2: |τ'| + |τ''| for two independent GW(ν) trees
    let nu_sampler = LawSampler::new(&nu);
    let cap = 1_000_000;
    let pair_sizes = run_replicas(seed, 1 << 32, reps, |rng| {
        let a = sample_tree_with(&nu_sampler, rng, cap)
            .map(|t| t.size())
            .unwrap_or(cap);
        let b = sample_tree_with(&nu_sampler, rng, cap)
            .map(|t| t.size())
            .unwrap_or(cap);
        Ok((a + b) as u64)
    })?;
    let mut pair_counts: BTreeMap<u64, u64> = BTreeMap::new();
    for s in &pair_sizes {
        *pair_counts.entry(*s).or_default() += 1;
    }

    let tv_pair = tv_distance(&empirical_law(&config_counts), &empirical_law(&pair_counts));
    report.push_row(n as u64, "tv_config_vs_gw_pair", tv_pair, None);
    report.push_check(
        "config_cluster_matches_size_biased_pair",
        tv_pair < tv_threshold,
        format!("TV {tv_pair} vs threshold {tv_threshold}"),
    );

    // contrast: a uniformly chosen grabbing-system cluster, which follows
    // the plain tree law rather than the arm-biased one
    if law.criticality() != Criticality::Supercritical && law.prob(0) > 0.0 {
        let grab = run_replicas(seed, 2 << 32, reps, |rng| {
            let (arms, _) =
                sample_conditioned_arms_with_budget(law, n, rng, DEFAULT_REJECTION_BUDGET)?;
            let shape = simulate_shape(&arms, rng)?;
            let pick = rng.gen_range(0..shape.tree_count());
            let tree = &shape.trees()[pick];
            Ok((tree.size() as u64, tree.to_string()))
        })?;
        let mut grab_sizes: BTreeMap<u64, u64> = BTreeMap::new();
        let mut grab_shapes: BTreeMap<String, u64> = BTreeMap::new();
        for (s, shape) in &grab {
            *grab_sizes.entry(*s).or_default() += 1;
            *grab_shapes.entry(shape.clone()).or_default() += 1;
        }
        let tv_contrast = tv_distance(&empirical_law(&grab_sizes), &empirical_law(&config_counts));
        report.push_row(
            n as u64,
            "tv_uniform_cluster_vs_arm_biased",
            tv_contrast,
            None,
        );

        // and against the Galton-Watson tree law itself
        let emp = empirical_law(&grab_shapes);
        let mut diff = 0.0;
        let mut matched = 0.0;
        for (text, freq) in &emp {
            let t: PlanarTree = text.parse().expect("empirical keys are tree texts");
            let q = tree_probability(law, &t);
            diff += (freq - q).abs();
            matched += q;
        }
        let tv_gw = (diff + (1.0 - matched).max(0.0)) / 2.0;
        report.push_row(n as u64, "tv_uniform_cluster_shape_vs_gw", tv_gw, None);
    }
    Ok(report)
}

/// Sample the cluster of a uniformly chosen arm by lazy stub pairing:
/// degrees are drawn i.i.d. (redrawn until the stub count is even and
/// positive), and only the pairings needed to reveal the cluster are made.
/// Returns the cluster size and how many odd-total redraws were needed.
fn config_cluster_of_uniform_arm<R: Rng + ?Sized>(
    degrees: &LawSampler,
    n: usize,
    rng: &mut R,
) -> (u64, u64) {
    let mut redraws = 0u64;
    let stub_owner: Vec<u32> = loop {
        let mut owners = Vec::new();
        for v in 0..n as u32 {
            for _ in 0..degrees.sample(rng) {
                owners.push(v);
            }
        }
        if !owners.is_empty() && owners.len() % 2 == 0 {
            break owners;
        }
        redraws += 1;
    };
    let stubs = stub_owner.len();
    // unpaired stub ids, swap-removed as they pair up
    let mut unpaired: Vec<u32> = (0..stubs as u32).collect();
    let mut position: Vec<u32> = (0..stubs as u32).collect();
    let remove = |unpaired: &mut Vec<u32>, position: &mut Vec<u32>, stub: u32| {
        let pos = position[stub as usize] as usize;
        let last = unpaired.len() - 1;
        unpaired.swap(pos, last);
        position[unpaired[pos] as usize] = pos as u32;
        unpaired.pop();
    };

    let start = rng.gen_range(0..stubs as u32);
    let mut in_cluster = vec![false; n];
    let v0 = stub_owner[start as usize];
    in_cluster[v0 as usize] = true;
    let mut cluster_size = 1u64;
    let mut queue: Vec<u32> = (0..stubs as u32)
        .filter(|&s| stub_owner[s as usize] == v0)
        .collect();
    let mut queued_or_paired = vec![false; stubs];
    for &s in &queue {
        queued_or_paired[s as usize] = true;
        remove(&mut unpaired, &mut position, s);
    }
    while let Some(_stub) = queue.pop() {
        // resolve the popped stub: pair it with a uniform remaining stub
        debug_assert!(!unpaired.is_empty() || !queue.is_empty());
        let partner = if unpaired.is_empty() {
            // only queued stubs remain; pair within the queue
            let ix = rng.gen_range(0..queue.len());
            queue.swap_remove(ix)
        } else {
            // the partner is uniform among all other unmatched stubs; those
            // are the unpaired ones plus the ones still waiting in the queue
            let total = unpaired.len() + queue.len();
            let ix = rng.gen_range(0..total);
            if ix < unpaired.len() {
                let partner = unpaired[ix];
                remove(&mut unpaired, &mut position, partner);
                queued_or_paired[partner as usize] = true;
                partner
            } else {
                queue.swap_remove(ix - unpaired.len())
            }
        };
        let v = stub_owner[partner as usize];
        if !in_cluster[v as usize] {
            in_cluster[v as usize] = true;
            cluster_size += 1;
            for s in 0..stubs as u32 {
                if stub_owner[s as usize] == v && s != partner && !queued_or_paired[s as usize] {
                    queued_or_paired[s as usize] = true;
                    remove(&mut unpaired, &mut position, s);
                    queue.push(s);
                }
            }
        }
    }
    (cluster_size, redraws)
}
