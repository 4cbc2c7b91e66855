//! Exhaustive exact-rational computations on small instances: the full
//! stochastic expansion of the grabbing dynamics, enumeration of the
//! labeled-forest space `Φ(x_1..x_n)`, and the exact conditioned
//! Galton-Watson law. No floats anywhere in this module.

use std::collections::{BTreeMap, HashMap};
use std::io;

use itertools::Itertools;
use thiserror::Error;

use crate::forest::{parse_forest, LabeledForest, PlanarForest, PlanarTree};
use crate::gw::first_passage_pmf;
use crate::law::ReproductionLaw;
use crate::prob::{Rational, Weight};
use crate::sim::ArmVector;

/// Default particle bound for the full dynamics expansion.
pub const TERMINAL_LAW_BOUND: usize = 6;
/// Default size bound for exact conditioned-forest laws.
pub const CONDITIONAL_GW_BOUND: usize = 10;
/// Size bound for exhaustive tree listings.
pub const ENUMERATE_TREES_BOUND: usize = 12;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("instance size {n} exceeds the exact-oracle bound {bound}")]
    TooLarge { n: usize, bound: usize },
    #[error("no forest with {k} trees and total size {n} has positive probability")]
    Infeasible { k: usize, n: usize },
}

/// An exact finite distribution over canonical text forms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactLaw {
    outcomes: BTreeMap<String, Rational>,
}

impl ExactLaw {
    /// Build from outcome masses; they must be positive and sum to one.
    pub fn new(outcomes: BTreeMap<String, Rational>) -> Self {
        let total = outcomes
            .values()
            .fold(Rational::zero(), |acc, p| acc.add(p));
        assert!(total.is_unit_total(), "masses sum to {total}, not 1");
        assert!(outcomes.values().all(|p| p.to_f64() > 0.0));
        Self { outcomes }
    }

    /// The uniform law over a set of outcomes.
    pub fn uniform_over<I: IntoIterator<Item = String>>(keys: I) -> Self {
        let keys: Vec<String> = keys.into_iter().collect();
        let mass = Rational::from_ratio(1, keys.len() as u64);
        Self::new(keys.into_iter().map(|k| (k, mass.clone())).collect())
    }

    pub fn outcomes(&self) -> &BTreeMap<String, Rational> {
        &self.outcomes
    }

    pub fn get(&self, key: &str) -> Option<&Rational> {
        self.outcomes.get(key)
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    /// True when every outcome carries the same mass.
    pub fn is_uniform(&self) -> bool {
        let mut values = self.outcomes.values();
        match values.next() {
            None => true,
            Some(first) => values.all(|p| p == first),
        }
    }

    /// CSV export: `outcome,numerator,denominator`, one row per outcome.
    pub fn write_csv<W: io::Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["outcome", "numerator", "denominator"])?;
        for (key, p) in &self.outcomes {
            w.write_record([key.as_str(), &p.numer().to_string(), &p.denom().to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A particle with its planar arm slots; filled slots carry the activation
/// label and the grabbed subtree.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Node {
    particle: u32,
    slots: Vec<Slot>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Slot {
    Open,
    Filled { label: u32, child: Node },
}

/// Axis-ordered planar configuration of the system at some time.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct State {
    roots: Vec<Node>,
}

fn open_slots(node: &Node, prefix: &mut Vec<usize>, out: &mut Vec<(Vec<usize>, usize)>) {
    for (i, slot) in node.slots.iter().enumerate() {
        match slot {
            Slot::Open => out.push((prefix.clone(), i)),
            Slot::Filled { child, .. } => {
                prefix.push(i);
                open_slots(child, prefix, out);
                prefix.pop();
            }
        }
    }
}

fn node_at_mut<'a>(mut node: &'a mut Node, path: &[usize]) -> &'a mut Node {
    for &ix in path {
        match &mut node.slots[ix] {
            Slot::Filled { child, .. } => node = child,
            Slot::Open => unreachable!("path runs through filled slots"),
        }
    }
    node
}

fn labeled_of_state(state: &State) -> LabeledForest {
    fn walk(node: &Node, outdegs: &mut Vec<u32>, vlabels: &mut Vec<u32>, elabels: &mut Vec<u32>) {
        outdegs.push(node.slots.len() as u32);
        vlabels.push(node.particle + 1);
        for slot in &node.slots {
            match slot {
                Slot::Filled { label, child } => {
                    // the child is visited right after its in-edge label is
                    // pushed, so edge labels land in child-position order
                    elabels.push(*label);
                    walk(child, outdegs, vlabels, elabels);
                }
                Slot::Open => unreachable!("terminal states have no open slots"),
            }
        }
    }
    let mut vlabels = Vec::new();
    let mut elabels = Vec::new();
    let mut trees = Vec::new();
    for root in &state.roots {
        let mut outdegs = Vec::new();
        walk(root, &mut outdegs, &mut vlabels, &mut elabels);
        trees.push(PlanarTree::new(outdegs).expect("terminal tree"));
    }
    let shape = PlanarForest::from_trees(trees).expect("at least one root");
    LabeledForest::new(shape, vlabels, elabels).expect("labels are bijections")
}

/// Expand the full tree of stochastic choices of the grabbing dynamics
/// (every initial axis order, every activation order, every grab) and
/// accumulate the exact probability of each terminal labeled forest.
pub fn exact_terminal_law(arms: &ArmVector) -> Result<ExactLaw, OracleError> {
    exact_terminal_law_bounded(arms, TERMINAL_LAW_BOUND)
}

/// As [`exact_terminal_law`] with an explicit particle bound.
pub fn exact_terminal_law_bounded(arms: &ArmVector, bound: usize) -> Result<ExactLaw, OracleError> {
    let n = arms.n();
    if n > bound {
        return Err(OracleError::TooLarge { n, bound });
    }
    let total_arms = arms.total_arms();

    // every initial axis order is equally likely
    let init_mass = Rational::from_ratio(1, factorial(n as u64));
    let mut level: HashMap<State, Rational> = (0..n as u32)
        .permutations(n)
        .map(|perm| {
            let roots = perm
                .iter()
                .map(|&p| Node {
                    particle: p,
                    slots: vec![Slot::Open; arms.counts()[p as usize] as usize],
                })
                .collect();
            (State { roots }, init_mass.clone())
        })
        .collect();

    for step in 0..total_arms {
        let arms_left = (total_arms - step) as u64;
        let roots_now = n - step;
        let eligible = (roots_now - 1) as u64;
        let branch = Rational::from_ratio(1, arms_left * eligible);
        let mut next: HashMap<State, Rational> = HashMap::with_capacity(level.len() * roots_now);
        for (state, mass) in &level {
            let step_mass = mass.mul(&branch);
            for (root_ix, root) in state.roots.iter().enumerate() {
                let mut slots = Vec::new();
                open_slots(root, &mut Vec::new(), &mut slots);
                for (path, slot_ix) in slots {
                    for target_ix in 0..state.roots.len() {
                        if target_ix == root_ix {
                            continue;
                        }
                        let mut new_state = state.clone();
                        let child = new_state.roots.remove(target_ix);
                        let root_ref = if target_ix < root_ix {
                            &mut new_state.roots[root_ix - 1]
                        } else {
                            &mut new_state.roots[root_ix]
                        };
                        let node = node_at_mut(root_ref, &path);
                        node.slots[slot_ix] = Slot::Filled {
                            label: (step + 1) as u32,
                            child,
                        };
                        next.entry(new_state)
                            .and_modify(|p| *p = p.add(&step_mass))
                            .or_insert_with(|| step_mass.clone());
                    }
                }
            }
        }
        level = next;
    }

    let mut outcomes = BTreeMap::new();
    for (state, mass) in level {
        let key = labeled_of_state(&state).render();
        outcomes
            .entry(key)
            .and_modify(|p: &mut Rational| *p = p.add(&mass))
            .or_insert(mass);
    }
    Ok(ExactLaw::new(outcomes))
}

fn factorial(n: u64) -> u64 {
    (1..=n).product::<u64>().max(1)
}

/// Enumerate `Φ(x_1..x_n)`: every plane forest with labeled vertices and
/// edges whose vertex outdegrees match the arm counts. Sorted by canonical
/// text form.
pub fn enumerate_phi(arms: &ArmVector) -> Result<Vec<LabeledForest>, OracleError> {
    enumerate_phi_bounded(arms, TERMINAL_LAW_BOUND)
}

pub fn enumerate_phi_bounded(
    arms: &ArmVector,
    bound: usize,
) -> Result<Vec<LabeledForest>, OracleError> {
    let n = arms.n();
    if n > bound {
        return Err(OracleError::TooLarge { n, bound });
    }
    let k = arms.tree_count();
    let m = arms.total_arms();
    let x = arms.counts();

    // distinct valid forest shapes with the right outdegree multiset
    let shapes: Vec<Vec<u32>> = x
        .iter()
        .copied()
        .permutations(n)
        .unique()
        .filter(|seq| parse_forest(seq, k).is_ok())
        .collect();

    // particles grouped by arm count; positions of each shape grouped by
    // outdegree must be labeled within the matching group
    let mut particles_by_degree: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for (i, &xi) in x.iter().enumerate() {
        particles_by_degree
            .entry(xi)
            .or_default()
            .push(i as u32 + 1);
    }

    let mut out = Vec::new();
    for seq in &shapes {
        let shape = parse_forest(seq, k).expect("filtered valid");
        let mut positions_by_degree: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (pos, &y) in seq.iter().enumerate() {
            positions_by_degree.entry(y).or_default().push(pos);
        }
        // per-degree assignments: all bijections group -> positions
        let group_choices: Vec<Vec<(Vec<usize>, Vec<u32>)>> = positions_by_degree
            .iter()
            .map(|(deg, positions)| {
                let particles = &particles_by_degree[deg];
                particles
                    .iter()
                    .copied()
                    .permutations(particles.len())
                    .map(|perm| (positions.clone(), perm))
                    .collect()
            })
            .collect();
        for assignment in group_choices.into_iter().multi_cartesian_product() {
            let mut vlabels = vec![0u32; n];
            for (positions, particles) in &assignment {
                for (&pos, &particle) in positions.iter().zip(particles) {
                    vlabels[pos] = particle;
                }
            }
            for elabels in (1..=m as u32).permutations(m) {
                out.push(
                    LabeledForest::new(shape.clone(), vlabels.clone(), elabels)
                        .expect("valid by construction"),
                );
            }
        }
    }
    out.sort_by_key(LabeledForest::render);
    Ok(out)
}

/// Visit every depth-first outdegree sequence of a plane forest with `k`
/// trees on `n` vertices, entries restricted to `allowed`; sequences come
/// out in the lexicographic order induced by the `allowed` listing.
fn for_each_forest_code(n: usize, k: usize, allowed: &[u32], visit: &mut impl FnMut(&[u32])) {
    fn rec(
        prefix: &mut Vec<u32>,
        walk: i64,
        remaining: usize,
        k: i64,
        allowed: &[u32],
        visit: &mut impl FnMut(&[u32]),
    ) {
        if remaining == 0 {
            if walk == -k {
                visit(prefix);
            }
            return;
        }
        for &y in allowed {
            let next = walk + i64::from(y) - 1;
            // stay strictly above -k before the end, and keep -k reachable
            // with at most one unit of descent per remaining step
            if remaining > 1 {
                if next <= -k || next > (remaining as i64 - 1) - k {
                    continue;
                }
            } else if next != -k {
                continue;
            }
            prefix.push(y);
            rec(prefix, next, remaining - 1, k, allowed, visit);
            prefix.pop();
        }
    }
    rec(&mut Vec::with_capacity(n), 0, n, k as i64, allowed, visit)
}

/// The exact law of a Galton-Watson forest with `k` ancestors conditioned
/// on total size `n`: each shape weighted by `Π μ(y_i)` and normalized by
/// the first-passage probability `P(T_k = n)`.
pub fn exact_conditional_gw(
    law: &ReproductionLaw<Rational>,
    k: usize,
    n: usize,
) -> Result<ExactLaw, OracleError> {
    exact_conditional_gw_bounded(law, k, n, CONDITIONAL_GW_BOUND)
}

pub fn exact_conditional_gw_bounded(
    law: &ReproductionLaw<Rational>,
    k: usize,
    n: usize,
    bound: usize,
) -> Result<ExactLaw, OracleError> {
    if n > bound {
        return Err(OracleError::TooLarge { n, bound });
    }
    let z = first_passage_pmf(law, k, n);
    if z.is_zero() {
        return Err(OracleError::Infeasible { k, n });
    }
    let allowed: Vec<u32> = law.support().collect();
    let mut outcomes: BTreeMap<String, Rational> = BTreeMap::new();
    for_each_forest_code(n, k, &allowed, &mut |seq| {
        let mass = seq
            .iter()
            .fold(Rational::one(), |acc, &y| acc.mul(&law.prob(y)));
        if mass.is_zero() {
            return;
        }
        let forest = parse_forest(seq, k).expect("generator emits forest codes");
        outcomes
            .entry(forest.to_string())
            .and_modify(|p| *p = p.add(&mass))
            .or_insert(mass);
    });
    // normalizing by the Kemperman mass must give a probability law; this
    // is the exact cross-module agreement the oracle certifies
    let outcomes = outcomes
        .into_iter()
        .map(|(key, p)| (key, p.div(&z)))
        .collect();
    Ok(ExactLaw::new(outcomes))
}

/// All plane trees with at most `max_size` vertices, sizes ascending and
/// outdegree sequences in decreasing lexicographic order within each size
/// (so `(2,0,0)` lists before `(1,1,0)`). Counts per size follow the
/// Catalan numbers.
pub fn enumerate_trees(max_size: usize) -> Result<Vec<PlanarTree>, OracleError> {
    if max_size > ENUMERATE_TREES_BOUND {
        return Err(OracleError::TooLarge {
            n: max_size,
            bound: ENUMERATE_TREES_BOUND,
        });
    }
    let mut out = Vec::new();
    for size in 1..=max_size {
        let allowed: Vec<u32> = (0..size as u32).rev().collect();
        for_each_forest_code(size, 1, &allowed, &mut |seq| {
            out.push(PlanarTree::new(seq.to_vec()).expect("tree code"));
        });
    }
    Ok(out)
}

/// The exact shape law of the terminal state under arms drawn i.i.d. from
/// the law conditioned on `Σξ = n-k`: the mixture, over arm vectors, of
/// the shape marginal of the uniform law on `Φ(x)`, weighted by
/// `P(ξ = x | Σξ = n-k)`.
pub fn shape_mixture_over_conditioned_arms(
    law: &ReproductionLaw<Rational>,
    k: usize,
    n: usize,
    bound: usize,
) -> Result<ExactLaw, OracleError> {
    if n > bound {
        return Err(OracleError::TooLarge { n, bound });
    }
    let pmf = crate::gw::walk_pmf(law, n);
    let total = n - k;
    let sum_mass = pmf.get(total).cloned().unwrap_or_else(Rational::zero);
    if sum_mass.is_zero() {
        return Err(OracleError::Infeasible { k, n });
    }
    let mut mixture: BTreeMap<String, Rational> = BTreeMap::new();
    let allowed: Vec<u32> = law.support().collect();
    for_each_composition(n, total as u64, &allowed, &mut |x| {
        let weight = x
            .iter()
            .fold(Rational::one(), |acc, &v| acc.mul(&law.prob(v)))
            .div(&sum_mass);
        let arms = ArmVector::new(x.to_vec()).expect("n>=2 and sum <= n-1");
        let phi = enumerate_phi_bounded(&arms, bound).expect("n within bound");
        let per_element = weight.div(&Rational::from_count(phi.len() as u64));
        for labeled in &phi {
            mixture
                .entry(labeled.shape().to_string())
                .and_modify(|p| *p = p.add(&per_element))
                .or_insert_with(|| per_element.clone());
        }
    });
    Ok(ExactLaw::new(mixture))
}

/// Visit every vector in `allowed^n` with the given total, ascending
/// lexicographically.
fn for_each_composition(n: usize, total: u64, allowed: &[u32], visit: &mut impl FnMut(&[u32])) {
    fn rec(
        prefix: &mut Vec<u32>,
        remaining_len: usize,
        remaining_sum: u64,
        allowed: &[u32],
        min_v: u64,
        max_v: u64,
        visit: &mut impl FnMut(&[u32]),
    ) {
        if remaining_len == 0 {
            if remaining_sum == 0 {
                visit(prefix);
            }
            return;
        }
        let rest = (remaining_len - 1) as u64;
        for &v in allowed {
            let v64 = u64::from(v);
            if v64 > remaining_sum {
                break;
            }
            let left = remaining_sum - v64;
            if left < rest * min_v || left > rest * max_v {
                continue;
            }
            prefix.push(v);
            rec(
                prefix,
                remaining_len - 1,
                left,
                allowed,
                min_v,
                max_v,
                visit,
            );
            prefix.pop();
        }
    }
    let min_v = u64::from(*allowed.first().expect("nonempty support"));
    let max_v = u64::from(*allowed.last().expect("nonempty support"));
    rec(
        &mut Vec::with_capacity(n),
        n,
        total,
        allowed,
        min_v,
        max_v,
        visit,
    )
}
