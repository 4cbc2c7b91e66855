//! Acceptance suite: one test per shipped criterion, each printing a
//! PASS line once its assertions hold. Exact criteria run in rational
//! arithmetic with zero tolerance; statistical criteria pin their seeds,
//! replica counts, and thresholds here.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use grabforest::forest::{tree_probability, LukasiewiczWalk, PlanarTree};
use grabforest::gw::{
    exponential_tilt, first_passage_curve, first_passage_pmf, molloy_reed_criterion, rotate_right,
    sample_tree_with, size_biased, valid_shifts, walk_pmf, ConditionedForestSampler,
    ConditionedForestSpec, LawSampler,
};
use grabforest::law::ReproductionLaw;
use grabforest::oracle::{
    enumerate_phi, exact_conditional_gw, exact_terminal_law, shape_mixture_over_conditioned_arms,
    ExactLaw,
};
use grabforest::prob::{rat, Rational, Weight};
use grabforest::sim::{sample_arms_with_sum, simulate_terminal, ArmVector};
use grabforest::stats::{
    chi_square_test, config_model_cluster_experiment, empirical_law, ratio_limit_check,
    theorem2_experiment, tv_distance, ExperimentReport,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn crit_rational() -> ReproductionLaw<Rational> {
    ReproductionLaw::parse("0:1/2,2:1/2").unwrap()
}

fn mixed_rational() -> ReproductionLaw<Rational> {
    ReproductionLaw::parse("0:1/2,1:1/4,2:1/4").unwrap()
}

fn subcritical_float() -> ReproductionLaw<f64> {
    ReproductionLaw::parse("0:0.5,1:0.3,2:0.2").unwrap()
}

/// Replica fan-out with one ChaCha8 stream per replica, results in
/// replica order.
fn par_replicas<T: Send, F: Fn(&mut ChaCha8Rng) -> T + Sync>(seed: u64, reps: u64, f: F) -> Vec<T> {
    (0..reps)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            f(&mut rng)
        })
        .collect()
}

/// Criterion 1: the terminal law of the grabbing dynamics is exactly the
/// uniform law on Φ(x), for every arm vector with n <= 5 and at most 4
/// arms, enumerated exhaustively. Zero tolerance.
#[test]
fn criterion_01_terminal_law_is_uniform_on_phi() {
    let mut cases = 0usize;
    for n in 2..=5usize {
        let max_arms = 4.min(n - 1) as u32;
        let mut stack = vec![Vec::<u32>::new()];
        while let Some(prefix) = stack.pop() {
            if prefix.len() == n {
                let total: u32 = prefix.iter().sum();
                if total <= max_arms {
                    let arms = ArmVector::new(prefix).unwrap();
                    let exact = exact_terminal_law(&arms).unwrap();
                    let phi = enumerate_phi(&arms).unwrap();
                    let uniform = ExactLaw::uniform_over(phi.iter().map(|f| f.render()));
                    assert_eq!(exact, uniform, "arms {:?}", arms.counts());
                    cases += 1;
                }
                continue;
            }
            let used: u32 = prefix.iter().sum();
            for v in 0..=(max_arms - used.min(max_arms)) {
                let mut next = prefix.clone();
                next.push(v);
                stack.push(next);
            }
        }
    }
    println!("acceptance 1 (terminal law uniform on Phi, {cases} arm vectors, exact): PASS");
}

/// Criterion 2a: for both test laws and every feasible (k, n) with n <= 6,
/// the mixture over conditioned arm draws of the uniform-on-Φ shape
/// marginal equals the conditioned Galton-Watson law. Exact equality.
#[test]
fn criterion_02a_conditioned_shape_law_exact() {
    let mut cases = 0usize;
    for law in [crit_rational(), mixed_rational()] {
        for n in 2..=6usize {
            for k in 1..=n {
                let gw = match exact_conditional_gw(&law, k, n) {
                    Ok(law) => law,
                    Err(_) => continue, // infeasible (k, n)
                };
                let mix = shape_mixture_over_conditioned_arms(&law, k, n, 6).unwrap();
                assert_eq!(mix, gw, "law {law} k={k} n={n}");
                cases += 1;
            }
        }
    }
    println!("acceptance 2a (conditioned shape law, {cases} feasible (k,n), exact): PASS");
}

const SEED_2B: u64 = 0x5eed_002b;
const REPS_2B: u64 = 1_000_000;

fn run_criterion_2b(seed: u64) -> (String, f64) {
    let law = crit_rational();
    let flaw = law.to_float();
    let exact = exact_conditional_gw(&law, 2, 6).unwrap();
    let expected: BTreeMap<String, f64> = exact
        .outcomes()
        .iter()
        .map(|(k, p)| (k.clone(), p.to_f64()))
        .collect();
    let shapes = par_replicas(seed, REPS_2B, |rng| {
        let arms = sample_arms_with_sum(&flaw, 6, 4, rng, 1_000_000).unwrap();
        let terminal = simulate_terminal(&arms, rng).unwrap();
        terminal.shape().to_string()
    });
    let mut observed: BTreeMap<String, u64> = BTreeMap::new();
    for s in shapes {
        *observed.entry(s).or_default() += 1;
    }
    for key in observed.keys() {
        assert!(expected.contains_key(key), "off-support shape {key}");
    }
    let test = chi_square_test(&observed, &expected, REPS_2B).unwrap();
    let artifact = serde_json::json!({
        "experiment": "conditioned_pipeline_vs_exact",
        "law": law.render(),
        "k": 2,
        "n": 6,
        "seed": seed,
        "reps": REPS_2B,
        "rng": "chacha8",
        "observed": observed,
        "chi_square": test.statistic,
        "p_value": test.p_value,
    });
    (
        serde_json::to_string_pretty(&artifact).unwrap(),
        test.p_value,
    )
}

static ART_2B: LazyLock<(String, f64)> = LazyLock::new(|| run_criterion_2b(SEED_2B));

/// Criterion 2b: the full pipeline (arms conditioned on Σξ = n-k, then the
/// grabbing dynamics, then label projection) against the exact conditioned
/// Galton-Watson law at (k=2, n=6), 10^6 replicas, chi-square p > 1e-3.
#[test]
fn criterion_02b_pipeline_matches_conditioned_gw_monte_carlo() {
    let (_, p_value) = &*ART_2B;
    assert!(*p_value > 1e-3, "chi-square p = {p_value}");
    println!(
        "acceptance 2b (pipeline vs conditioned GW, 1e6 replicas, p = {p_value:.4} > 1e-3): PASS"
    );
}

const SEED_3: u64 = 0x5eed_0003;

fn run_criterion_3(seed: u64) -> String {
    let law = crit_rational().to_float();
    let leaf = PlanarTree::leaf();
    let cherry = PlanarTree::new(vec![2, 0, 0]).unwrap();
    let mut artifacts: BTreeMap<String, ExperimentReport> = BTreeMap::new();
    artifacts.insert(
        "leaf".into(),
        theorem2_experiment(&law, &leaf, &[50, 200, 800], 2000, seed).unwrap(),
    );
    artifacts.insert(
        "cherry".into(),
        theorem2_experiment(&law, &cherry, &[50, 200, 800], 2000, seed + 1).unwrap(),
    );
    serde_json::to_string_pretty(&artifacts).unwrap()
}

static ART_3: LazyLock<String> = LazyLock::new(|| run_criterion_3(SEED_3));

/// Criterion 3: the mean squared deviation of the empirical tree
/// proportion decreases along n = 50, 200, 800 (within 2 pooled SE) and
/// ends below 0.01, for the single-vertex tree (target 1/2) and the
/// three-vertex branching tree (target 1/8).
#[test]
fn criterion_03_empirical_measure_l2_convergence() {
    let artifacts: BTreeMap<String, ExperimentReport> = serde_json::from_str(&ART_3).unwrap();
    for (name, target) in [("leaf", 0.5), ("cherry", 0.125)] {
        let report = &artifacts[name];
        assert!(
            report.passed(),
            "{name}: monotonicity checks failed: {:?}",
            report.checks
        );
        assert_eq!(report.extra["target_probability"], target.to_string());
        let series = report.series("mean_sq_deviation");
        let last = series.last().unwrap();
        assert_eq!(last.n, 800);
        // Known to fail for the single-vertex tree: at criticality
        // k(n) | k(n) >= 1 is of order sqrt(n), so the true expectation at
        // n = 800 is ~= 0.0226 (estimator cross-validated against the
        // exact value 1/20 at n = 4 in the consistency suite). The
        // threshold is kept as shipped rather than loosened.
        assert!(
            last.value < 0.01,
            "{name}: final mean squared deviation {} +- {} at n=800 is not below 0.01",
            last.value,
            last.std_error.unwrap_or(0.0)
        );
    }
    println!("acceptance 3 (empirical tree measure L2 decreasing, final < 0.01): PASS");
}

/// Criterion 4: the first-passage formula against an independently coded
/// convolution for every 1 <= k < n <= 40, and against brute-force
/// sequence enumeration for n <= 10. Exact equality throughout.
#[test]
fn criterion_04_first_passage_formula_exact() {
    for law in [crit_rational(), mixed_rational()] {
        // independent convolution of the walk increments
        let mut pmf: Vec<Rational> = vec![rat(1, 1)];
        for n in 1..=40usize {
            let mut next = vec![rat(0, 1); pmf.len() + law.max_value() as usize];
            for (s, mass) in pmf.iter().enumerate() {
                for (v, p) in law.entries() {
                    next[s + *v as usize] += mass * p;
                }
            }
            pmf = next;
            for k in 1..n {
                let expected = rat(k as i64, n as i64) * pmf[n - k].clone();
                assert_eq!(
                    first_passage_pmf(&law, k, n),
                    expected,
                    "law {law} k={k} n={n}"
                );
            }
        }

        // brute force: bucket every sequence in support^n by its
        // first-passage level
        let support: Vec<u32> = law.support().collect();
        for n in 1..=10usize {
            let mut buckets: BTreeMap<usize, Rational> = BTreeMap::new();
            let mut seq = vec![0u32; n];
            bucket_by_passage(&law, &support, &mut seq, 0, &mut buckets);
            for k in 1..=n {
                let brute = buckets.get(&k).cloned().unwrap_or_else(|| rat(0, 1));
                assert_eq!(
                    brute,
                    first_passage_pmf(&law, k, n),
                    "law {law} k={k} n={n}"
                );
            }
        }
    }
    println!(
        "acceptance 4 (first-passage identity, k < n <= 40 and brute force n <= 10, exact): PASS"
    );
}

fn bucket_by_passage(
    law: &ReproductionLaw<Rational>,
    support: &[u32],
    seq: &mut Vec<u32>,
    pos: usize,
    buckets: &mut BTreeMap<usize, Rational>,
) {
    if pos == seq.len() {
        let walk = LukasiewiczWalk::from_outdegrees(seq);
        let last = *walk.partial_sums().last().unwrap();
        if last < 0 {
            let k = (-last) as usize;
            if walk.first_passage(k) == Some(seq.len()) {
                let mass = seq.iter().fold(rat(1, 1), |acc, &y| acc * law.prob(y));
                *buckets.entry(k).or_insert_with(|| rat(0, 1)) += mass;
            }
        }
        return;
    }
    for &v in support {
        seq[pos] = v;
        bucket_by_passage(law, support, seq, pos + 1, buckets);
    }
}

const SEED_5: u64 = 0x5eed_0005;
const REPS_5: u64 = 100_000;

fn run_criterion_5(seed: u64) -> (String, f64) {
    let law = crit_rational().to_float();
    let spec = ConditionedForestSpec {
        law: law.clone(),
        k: 2,
        n: 8,
    };
    let sampler = ConditionedForestSampler::new(spec).unwrap();
    let direct = par_replicas(seed, REPS_5, |rng| sampler.sample(rng).to_string());
    // reference route: two free trees, accepted only when the total size
    // is exactly 8
    let law_sampler = LawSampler::new(&law);
    let rejection = par_replicas(seed + 1, REPS_5, |rng| loop {
        let a = sample_tree_with(&law_sampler, rng, 10_000);
        let b = sample_tree_with(&law_sampler, rng, 10_000);
        if let (Ok(a), Ok(b)) = (a, b) {
            if a.size() + b.size() == 8 {
                return format!("({}|{})", text_inner(&a), text_inner(&b));
            }
        }
    });
    let mut direct_counts: BTreeMap<String, u64> = BTreeMap::new();
    for s in direct {
        *direct_counts.entry(s).or_default() += 1;
    }
    let mut rejection_counts: BTreeMap<String, u64> = BTreeMap::new();
    for s in rejection {
        *rejection_counts.entry(s).or_default() += 1;
    }
    let tv = tv_distance(
        &empirical_law(&direct_counts),
        &empirical_law(&rejection_counts),
    );
    let artifact = serde_json::json!({
        "experiment": "conditioned_sampler_vs_rejection",
        "law": law.render(),
        "k": 2,
        "n": 8,
        "seed": seed,
        "reps": REPS_5,
        "rng": "chacha8",
        "direct": direct_counts,
        "rejection": rejection_counts,
        "tv": tv,
    });
    (serde_json::to_string_pretty(&artifact).unwrap(), tv)
}

fn text_inner(t: &PlanarTree) -> String {
    let s = t.to_string();
    s[1..s.len() - 1].to_string()
}

static ART_5: LazyLock<(String, f64)> = LazyLock::new(|| run_criterion_5(SEED_5));

/// Criterion 5: cycle-lemma cardinality on 10^4 random sequences, and the
/// conditioned sampler against free-tree rejection sampling at
/// (k=2, n=8): total variation below 0.01 at 10^5 samples each.
#[test]
fn criterion_05_cycle_lemma_and_sampler_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0500);
    for _ in 0..10_000 {
        let n = rng.gen_range(1..=20usize);
        let mut seq: Vec<u32> = (0..n).map(|_| rng.gen_range(0..4u32)).collect();
        let sum: u32 = seq.iter().sum();
        if sum >= n as u32 {
            seq.extend(std::iter::repeat_n(0, (sum - n as u32 + 1) as usize));
        }
        let k = seq.len() - seq.iter().map(|&y| y as usize).sum::<usize>();
        let shifts = valid_shifts(&seq, k).unwrap();
        assert_eq!(shifts.len(), k, "sequence {seq:?}");
        // each returned shift really is a forest code
        for &r in &shifts {
            let rotated = rotate_right(&seq, r);
            assert_eq!(
                LukasiewiczWalk::from_outdegrees(&rotated).first_passage(k),
                Some(rotated.len())
            );
        }
    }

    let (_, tv) = &*ART_5;
    assert!(*tv < 0.01, "TV {tv} >= 0.01");
    println!(
        "acceptance 5 (cycle lemma |shifts| = k on 1e4 sequences; sampler TV = {tv:.4} < 0.01): PASS"
    );
}

const SEED_6: u64 = 0x5eed_0006;
const REPS_6: u64 = 100_000;

fn run_criterion_6(seed: u64) -> (String, f64, f64) {
    let law = crit_rational();
    let flaw = law.to_float();
    let sampler = LawSampler::new(&flaw);
    let cap = 10_000usize;
    let sizes = par_replicas(seed, REPS_6, |rng| {
        let mut draw = || match sample_tree_with(&sampler, rng, cap) {
            Ok(t) => t.size() as u64,
            Err(_) => cap as u64,
        };
        [draw(), draw(), draw()]
    });

    // per-tree size marginal, pooled over the three positions
    let curve = first_passage_curve(&law, 1, 99);
    let marginal_expected: BTreeMap<u64, f64> = (1..=99u64)
        .map(|s| (s, curve[s as usize].to_f64()))
        .collect();
    let mut marginal_counts: BTreeMap<u64, u64> = BTreeMap::new();
    for s in sizes.iter().flatten() {
        *marginal_counts.entry(*s).or_default() += 1;
    }
    let marginal = chi_square_test(&marginal_counts, &marginal_expected, 3 * REPS_6).unwrap();

    // independence of the first two sizes, on the buckets 1,3,5,7,9+
    let bucket = |s: u64| s.min(9);
    let bucket_prob = |b: u64| -> f64 {
        if b == 9 {
            1.0 - [1usize, 3, 5, 7]
                .iter()
                .map(|&s| curve[s].to_f64())
                .sum::<f64>()
        } else {
            curve[b as usize].to_f64()
        }
    };
    let mut joint_counts: BTreeMap<(u64, u64), u64> = BTreeMap::new();
    for trio in &sizes {
        *joint_counts
            .entry((bucket(trio[0]), bucket(trio[1])))
            .or_default() += 1;
    }
    let mut joint_expected: BTreeMap<(u64, u64), f64> = BTreeMap::new();
    for &a in &[1u64, 3, 5, 7, 9] {
        for &b in &[1u64, 3, 5, 7, 9] {
            joint_expected.insert((a, b), bucket_prob(a) * bucket_prob(b));
        }
    }
    let joint = chi_square_test(&joint_counts, &joint_expected, REPS_6).unwrap();

    let joint_counts_text: BTreeMap<String, u64> = joint_counts
        .iter()
        .map(|((a, b), c)| (format!("{a},{b}"), *c))
        .collect();
    let artifact = serde_json::json!({
        "experiment": "free_forest_tree_sizes",
        "law": flaw.render(),
        "k": 3,
        "seed": seed,
        "reps": REPS_6,
        "rng": "chacha8",
        "marginal_counts": marginal_counts,
        "marginal_p": marginal.p_value,
        "joint_counts": joint_counts_text,
        "joint_p": joint.p_value,
    });
    (
        serde_json::to_string_pretty(&artifact).unwrap(),
        marginal.p_value,
        joint.p_value,
    )
}

static ART_6: LazyLock<(String, f64, f64)> = LazyLock::new(|| run_criterion_6(SEED_6));

/// Criterion 6: in a free 3-tree forest, per-tree sizes follow the
/// first-passage law (chi-square p > 1e-3 at 10^5 forests) and the first
/// two sizes pass an independence chi-square at p > 1e-3.
#[test]
fn criterion_06_forest_tree_sizes_are_iid_first_passage() {
    let (_, p_marginal, p_joint) = &*ART_6;
    assert!(*p_marginal > 1e-3, "marginal p {p_marginal}");
    assert!(*p_joint > 1e-3, "joint p {p_joint}");
    println!(
        "acceptance 6 (tree sizes i.i.d. first-passage, p = {p_marginal:.4}/{p_joint:.4} > 1e-3): PASS"
    );
}

/// Criterion 7: exact tail ratios at ℓ = 5 for the aperiodic critical law
/// increase monotonically toward 1 along n = 500, 2000, 8000 and end
/// within 0.1 of 1. No Monte Carlo noise.
#[test]
fn criterion_07_ratio_limit_exact_dp() {
    let law = ReproductionLaw::<f64>::parse("0:0.35,1:0.30,2:0.35").unwrap();
    let report = ratio_limit_check(&law, &[500, 2000, 8000], 5).unwrap();
    assert!(report.passed(), "{:?}", report.checks);
    let ratios: Vec<f64> = report.series("ratio").iter().map(|r| r.value).collect();
    assert!(ratios.windows(2).all(|w| w[1] > w[0]), "ratios {ratios:?}");
    let last = ratios.last().unwrap();
    assert!((last - 1.0).abs() <= 0.1, "final ratio {last}");
    println!(
        "acceptance 7 (exact tail ratios {ratios:?} increase toward 1, final within 0.1): PASS"
    );
}

/// Criterion 8: the exponential tilt hits its closed form within 1e-9 per
/// entry, the identity tilt returns its input within 1e-12, and tilting
/// back recovers the original law within 1e-9.
#[test]
fn criterion_08_exponential_tilt() {
    let law = ReproductionLaw::<f64>::parse("0:0.25,2:0.75").unwrap();
    let (tilted, _) = exponential_tilt(&law, 0.5).unwrap();
    assert!((tilted.prob(0) - 0.75).abs() < 1e-9);
    assert!((tilted.prob(2) - 0.25).abs() < 1e-9);

    let (identity, _) = exponential_tilt(&law, law.mean()).unwrap();
    for ((v, p), (w, q)) in law.entries().iter().zip(identity.entries()) {
        assert_eq!(v, w);
        assert!((p - q).abs() < 1e-12, "identity tilt moved {v}: {p} vs {q}");
    }

    let (there, _) = exponential_tilt(&law, 0.9).unwrap();
    let (back, _) = exponential_tilt(&there, law.mean()).unwrap();
    for ((v, p), (w, q)) in law.entries().iter().zip(back.entries()) {
        assert_eq!(v, w);
        assert!((p - q).abs() < 1e-9, "round trip moved {v}: {p} vs {q}");
    }
    println!("acceptance 8 (tilt closed form, identity, round trip): PASS");
}

const SEED_9: u64 = 0x5eed_0009;
const REPS_9: u64 = 100_000;

fn run_criterion_9(seed: u64) -> String {
    config_model_cluster_experiment(&subcritical_float(), 2000, REPS_9, seed, 0.02)
        .unwrap()
        .to_json()
}

static ART_9: LazyLock<String> = LazyLock::new(|| run_criterion_9(SEED_9));

/// Criterion 9: size-biasing is exact in rationals, the giant-component
/// criterion evaluates to -3/10 exactly, and the cluster of a uniform arm
/// in the configuration model matches two joined size-biased trees within
/// total variation 0.02 at 10^5 samples.
#[test]
fn criterion_09_configuration_model_comparison() {
    let law = ReproductionLaw::<Rational>::parse("0:1/2,1:3/10,2:1/5").unwrap();
    let nu = size_biased(&law).unwrap();
    assert_eq!(nu.prob(0), rat(3, 7));
    assert_eq!(nu.prob(1), rat(4, 7));
    assert_eq!(nu.entries().len(), 2);
    assert_eq!(molloy_reed_criterion(&law), rat(-3, 10));

    let report: ExperimentReport = serde_json::from_str(&ART_9).unwrap();
    assert!(report.passed(), "{:?}", report.checks);
    let tv = report.series("tv_config_vs_gw_pair")[0].value;
    assert!(tv < 0.02, "TV {tv}");
    println!("acceptance 9 (size-biased law exact; cluster TV = {tv:.4} < 0.02): PASS");
}

/// Criterion 11: the statistical artifacts of criteria 2b, 3, 5, 6, and 9
/// are byte-identical across reruns with the same seeds.
#[test]
fn criterion_11_reproducibility_byte_identical_artifacts() {
    assert_eq!(
        run_criterion_2b(SEED_2B).0,
        ART_2B.0,
        "criterion 2b artifact"
    );
    assert_eq!(run_criterion_3(SEED_3), *ART_3, "criterion 3 artifact");
    assert_eq!(run_criterion_5(SEED_5).0, ART_5.0, "criterion 5 artifact");
    assert_eq!(run_criterion_6(SEED_6).0, ART_6.0, "criterion 6 artifact");
    assert_eq!(run_criterion_9(SEED_9), *ART_9, "criterion 9 artifact");
    println!("acceptance 11 (byte-identical artifacts for 2b, 3, 5, 6, 9): PASS");
}

/// Extra guard for the walk/tree layer the criteria lean on: the exact
/// conditioned law degenerates correctly at forced instances.
#[test]
fn conditioned_law_forced_instances() {
    let law = crit_rational();
    let one = exact_conditional_gw(&law, 1, 3).unwrap();
    assert_eq!(one.get("(2,0,0)"), Some(&rat(1, 1)));
    assert_eq!(
        tree_probability(&law, &PlanarTree::new(vec![2, 0, 0]).unwrap()),
        rat(1, 8)
    );
    let pmf = walk_pmf(&law, 3);
    assert_eq!(pmf[2], rat(3, 8));
}
