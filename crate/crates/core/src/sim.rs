//! The grabbing particle system: arms activate in uniform random order and
//! each grabs a uniform root outside its own cluster, until every arm has
//! become a labeled oriented edge.
//!
//! Two execution modes share one engine. Full-fidelity mode tracks the
//! uniformly random left-to-right axis order plus vertex and edge labels
//! and yields a [`LabeledForest`]; shape mode skips all labeling and yields
//! the bare [`PlanarForest`], which is what large-n empirical experiments
//! consume.

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::forest::{LabeledForest, PlanarForest, PlanarTree};
use crate::gw::LawSampler;
use crate::law::ReproductionLaw;

/// Default number of rejection attempts before conditioning is declared
/// impossible.
pub const DEFAULT_REJECTION_BUDGET: u64 = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error(
        "invalid arm counts: need n >= 2 particles and total arms <= n-1 (n={n}, arms={arms})"
    )]
    InvalidArms { n: usize, arms: u64 },
    #[error("time {time} out of range 0..={max}")]
    OutOfRange { time: usize, max: usize },
    #[error(
        "no draw with k(n) >= 1 after {attempts} attempts; the event is impossible or negligible"
    )]
    ConditioningImpossible { attempts: u64 },
}

/// Per-particle arm counts `x_1..x_n` with `Σ x_i = n - k`, `1 <= k <= n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArmVector {
    counts: Vec<u32>,
}

impl ArmVector {
    pub fn new(counts: Vec<u32>) -> Result<Self, SimError> {
        let n = counts.len();
        let arms: u64 = counts.iter().map(|&x| u64::from(x)).sum();
        if n < 2 || arms > (n - 1) as u64 {
            return Err(SimError::InvalidArms { n, arms });
        }
        Ok(Self { counts })
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Number of particles `n`.
    pub fn n(&self) -> usize {
        self.counts.len()
    }

    /// Total number of arms `n - k`.
    pub fn total_arms(&self) -> usize {
        self.counts.iter().map(|&x| x as usize).sum()
    }

    /// Number of trees in the terminal state, `k = n - Σ x_i`.
    pub fn tree_count(&self) -> usize {
        self.n() - self.total_arms()
    }
}

/// Raw terminal data shared by both output modes.
struct EngineOutput {
    /// initial axis order (particle ids left to right); full fidelity only
    axis: Option<Vec<u32>>,
    /// terminal roots, unordered
    roots: Vec<u32>,
    /// child particle per (particle, slot), CSR-indexed by `offsets`
    child_of_slot: Vec<u32>,
    offsets: Vec<usize>,
    /// activation label of the in-edge of each grabbed particle (0 = none)
    in_edge_label: Vec<u32>,
}

fn run_engine<R: Rng + ?Sized>(arms: &ArmVector, rng: &mut R, full: bool) -> EngineOutput {
    let n = arms.n();
    let x = arms.counts();
    let total_arms = arms.total_arms();

    let axis = full.then(|| {
        let mut axis: Vec<u32> = (0..n as u32).collect();
        axis.shuffle(rng);
        axis
    });

    // activation order: a uniform permutation of all (particle, slot) arms
    let mut activation: Vec<(u32, u32)> = Vec::with_capacity(total_arms);
    for (p, &xp) in x.iter().enumerate() {
        for s in 0..xp {
            activation.push((p as u32, s));
        }
    }
    activation.shuffle(rng);

    let mut offsets = Vec::with_capacity(n + 1);
    let mut acc = 0usize;
    for &xp in x {
        offsets.push(acc);
        acc += xp as usize;
    }
    offsets.push(acc);

    let mut child_of_slot = vec![u32::MAX; total_arms];
    let mut in_edge_label = vec![0u32; n];

    let mut dsu = Dsu::new(n);
    let mut roots: Vec<u32> = (0..n as u32).collect();
    let mut pos_in_roots: Vec<u32> = (0..n as u32).collect();

    for (step, &(grabber, slot)) in activation.iter().enumerate() {
        let g_root = dsu.cluster_root(grabber);
        let len = roots.len();
        debug_assert_eq!(len, n - step);
        debug_assert!(len >= 2, "eligibility count must stay positive");
        // uniform over all current roots except the grabber's own
        let own = pos_in_roots[g_root as usize] as usize;
        let mut j = rng.gen_range(0..len - 1);
        if j == own {
            j = len - 1;
        }
        let target = roots[j];

        child_of_slot[offsets[grabber as usize] + slot as usize] = target;
        in_edge_label[target as usize] = (step + 1) as u32;

        // remove the grabbed root from the axis
        let last = len - 1;
        roots.swap(j, last);
        pos_in_roots[roots[j] as usize] = j as u32;
        roots.pop();

        dsu.union_into(grabber, target, g_root);
    }

    EngineOutput {
        axis,
        roots,
        child_of_slot,
        offsets,
        in_edge_label,
    }
}

/// Depth-first traversal of one terminal tree, children in slot order.
fn collect_tree(
    root: u32,
    x: &[u32],
    offsets: &[usize],
    child_of_slot: &[u32],
    mut visit: impl FnMut(u32),
) {
    let mut stack = vec![root];
    while let Some(p) = stack.pop() {
        visit(p);
        let (lo, hi) = (
            offsets[p as usize],
            offsets[p as usize] + x[p as usize] as usize,
        );
        for &c in child_of_slot[lo..hi].iter().rev() {
            debug_assert_ne!(c, u32::MAX, "terminal state has every slot filled");
            stack.push(c);
        }
    }
}

/// Run the dynamics and return the terminal state with vertex labels
/// `1..=n` and edge labels `1..=n-k` (full-fidelity mode).
pub fn simulate_terminal<R: Rng + ?Sized>(
    arms: &ArmVector,
    rng: &mut R,
) -> Result<LabeledForest, SimError> {
    Ok(simulate_trajectory(arms, rng)?.into_terminal())
}

/// Run the dynamics tracking only tree structure (shape mode); trees are
/// reported in increasing order of their root particle id.
pub fn simulate_shape<R: Rng + ?Sized>(
    arms: &ArmVector,
    rng: &mut R,
) -> Result<PlanarForest, SimError> {
    // re-validate so direct callers get the same contract
    ArmVector::new(arms.counts.clone())?;
    let out = run_engine(arms, rng, false);
    let mut roots = out.roots.clone();
    roots.sort_unstable();
    let x = arms.counts();
    let trees = roots
        .iter()
        .map(|&r| {
            let mut outdegs = Vec::new();
            collect_tree(r, x, &out.offsets, &out.child_of_slot, |p| {
                outdegs.push(x[p as usize]);
            });
            PlanarTree::new(outdegs).expect("terminal tree encodes itself")
        })
        .collect();
    Ok(PlanarForest::from_trees(trees).expect("k >= 1 trees"))
}

/// A full-fidelity run: the initial axis order plus the labeled terminal
/// state, enough to reconstruct the system at every intermediate time.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    arms: ArmVector,
    /// all n particle labels (1-based) in initial left-to-right order
    initial_axis: Vec<u32>,
    terminal: LabeledForest,
}

/// Run the dynamics in full-fidelity mode, keeping the trajectory.
pub fn simulate_trajectory<R: Rng + ?Sized>(
    arms: &ArmVector,
    rng: &mut R,
) -> Result<Trajectory, SimError> {
    ArmVector::new(arms.counts.clone())?;
    let out = run_engine(arms, rng, true);
    let axis = out.axis.as_ref().expect("full mode keeps the axis");
    let mut axis_pos = vec![0u32; arms.n()];
    for (pos, &p) in axis.iter().enumerate() {
        axis_pos[p as usize] = pos as u32;
    }
    let mut roots = out.roots.clone();
    roots.sort_unstable_by_key(|&r| axis_pos[r as usize]);

    let x = arms.counts();
    let n = arms.n();
    let mut trees = Vec::with_capacity(roots.len());
    let mut vertex_labels = Vec::with_capacity(n);
    let mut edge_labels = Vec::with_capacity(arms.total_arms());
    for &r in &roots {
        let mut outdegs = Vec::new();
        collect_tree(r, x, &out.offsets, &out.child_of_slot, |p| {
            outdegs.push(x[p as usize]);
            vertex_labels.push(p + 1);
            if p != r {
                edge_labels.push(out.in_edge_label[p as usize]);
            }
        });
        trees.push(PlanarTree::new(outdegs).expect("terminal tree encodes itself"));
    }
    let shape = PlanarForest::from_trees(trees).expect("k >= 1 trees");
    let terminal = LabeledForest::new(shape, vertex_labels, edge_labels)
        .expect("terminal labels are bijections");
    Ok(Trajectory {
        arms: arms.clone(),
        initial_axis: axis.iter().map(|&p| p + 1).collect(),
        terminal,
    })
}

/// One pruned state of a trajectory: the system after `time` activations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemState {
    pub time: usize,
    /// particle labels of current roots, in left-to-right axis order
    pub root_order: Vec<u32>,
    /// remaining inactive arm slots per particle (index = label - 1)
    pub remaining_arms: Vec<u32>,
    /// cluster member labels (sorted), one cluster per root, in root order
    pub clusters: Vec<Vec<u32>>,
    /// activated edges, sorted by label
    pub edges: Vec<crate::forest::LabeledEdge>,
}

impl Trajectory {
    pub fn arms(&self) -> &ArmVector {
        &self.arms
    }

    /// Initial left-to-right axis order (particle labels).
    pub fn initial_axis(&self) -> &[u32] {
        &self.initial_axis
    }

    pub fn terminal(&self) -> &LabeledForest {
        &self.terminal
    }

    pub fn into_terminal(self) -> LabeledForest {
        self.terminal
    }

    /// The state after `time` activations, obtained by pruning every edge
    /// labeled above `time` from the terminal state.
    pub fn state_at(&self, time: usize) -> Result<SystemState, SimError> {
        let n = self.arms.n();
        let max = self.arms.total_arms();
        if time > max {
            return Err(SimError::OutOfRange { time, max });
        }
        let mut edges: Vec<_> = self
            .terminal
            .edges()
            .into_iter()
            .filter(|e| e.label as usize <= time)
            .collect();
        edges.sort_by_key(|e| e.label);

        let mut remaining_arms: Vec<u32> = self.arms.counts().to_vec();
        let mut grabbed = vec![false; n];
        let mut dsu = Dsu::new(n);
        for e in &edges {
            remaining_arms[e.from as usize - 1] -= 1;
            grabbed[e.to as usize - 1] = true;
            let axis_root = dsu.cluster_root(e.from - 1);
            dsu.union_into(e.from - 1, e.to - 1, axis_root);
        }
        let root_order: Vec<u32> = self
            .initial_axis
            .iter()
            .copied()
            .filter(|&p| !grabbed[p as usize - 1])
            .collect();
        let mut members: Vec<Vec<u32>> = vec![Vec::new(); n];
        for p in 1..=n as u32 {
            let rep = dsu.find(p - 1) as usize;
            members[rep].push(p);
        }
        let clusters: Vec<Vec<u32>> = root_order
            .iter()
            .map(|&root| {
                let rep = dsu.find(root - 1) as usize;
                let mut c = std::mem::take(&mut members[rep]);
                c.sort_unstable();
                c
            })
            .collect();
        Ok(SystemState {
            time,
            root_order,
            remaining_arms,
            clusters,
            edges,
        })
    }
}

/// Draw i.i.d. arm counts from the law, rejecting until `k(n) >= 1`
/// (`Σ ξ_i <= n-1`); realizes the conditional initial law of the system.
pub fn sample_conditioned_arms<R: Rng + ?Sized>(
    law: &ReproductionLaw<f64>,
    n: usize,
    rng: &mut R,
) -> Result<ArmVector, SimError> {
    sample_conditioned_arms_with_budget(law, n, rng, DEFAULT_REJECTION_BUDGET).map(|(a, _)| a)
}

/// As [`sample_conditioned_arms`], also reporting how many draws were
/// needed so callers can surface the conditioning acceptance rate.
pub fn sample_conditioned_arms_with_budget<R: Rng + ?Sized>(
    law: &ReproductionLaw<f64>,
    n: usize,
    rng: &mut R,
    budget: u64,
) -> Result<(ArmVector, u64), SimError> {
    if n < 2 {
        return Err(SimError::InvalidArms { n, arms: 0 });
    }
    let sampler = LawSampler::new(law);
    let mut counts = vec![0u32; n];
    for attempt in 1..=budget {
        let mut sum = 0u64;
        for c in counts.iter_mut() {
            *c = sampler.sample(rng);
            sum += u64::from(*c);
        }
        if sum <= (n - 1) as u64 {
            let arms = ArmVector::new(std::mem::take(&mut counts))
                .expect("accepted draw satisfies the arm constraint");
            return Ok((arms, attempt));
        }
    }
    Err(SimError::ConditioningImpossible { attempts: budget })
}

/// Draw i.i.d. arm counts conditioned on the exact total `Σ ξ_i = total`,
/// by rejection with the same budget semantics.
pub fn sample_arms_with_sum<R: Rng + ?Sized>(
    law: &ReproductionLaw<f64>,
    n: usize,
    total: u64,
    rng: &mut R,
    budget: u64,
) -> Result<ArmVector, SimError> {
    let sampler = LawSampler::new(law);
    let mut counts = vec![0u32; n];
    for _ in 0..budget {
        let mut sum = 0u64;
        for c in counts.iter_mut() {
            *c = sampler.sample(rng);
            sum += u64::from(*c);
        }
        if sum == total {
            return ArmVector::new(std::mem::take(&mut counts));
        }
    }
    Err(SimError::ConditioningImpossible { attempts: budget })
}

/// Union-find over particles with the extra map from each cluster to the
/// particle that still represents it on the axis.
struct Dsu {
    parent: Vec<u32>,
    size: Vec<u32>,
    cluster_root: Vec<u32>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
            cluster_root: (0..n as u32).collect(),
        }
    }

    fn find(&mut self, mut i: u32) -> u32 {
        while self.parent[i as usize] != i {
            // path halving
            let gp = self.parent[self.parent[i as usize] as usize];
            self.parent[i as usize] = gp;
            i = gp;
        }
        i
    }

    /// Axis root of the cluster containing `i`.
    fn cluster_root(&mut self, i: u32) -> u32 {
        let rep = self.find(i);
        self.cluster_root[rep as usize]
    }

    /// Merge the clusters of `a` and `b`; the merged cluster keeps
    /// `axis_root` as its root on the axis.
    fn union_into(&mut self, a: u32, b: u32, axis_root: u32) {
        let mut ra = self.find(a);
        let mut rb = self.find(b);
        if ra == rb {
            return;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
        self.cluster_root[ra as usize] = axis_root;
    }
}
