//! Best-first branch-and-bound. Each node solves the bundle bound on its
//! reduced instance, runs the variable-fixing heuristic, and branches on the
//! most fractional item. Nodes with few items left to pick are finished by
//! [`prune::branch_and_prune`].

pub mod prune;

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::bundle::{self, BundleEvent, BundleSettings};
use crate::heuristics::{primal_heuristic, varfix_heuristic, Incumbent, Source};
use crate::instance::{preprocess, Instance, Status};
use crate::relaxation::{build_padded, extract_fractional};

#[derive(Debug, Clone, Serialize)]
pub struct SolverConfig {
    pub time_limit: Option<Duration>,
    pub root_bundle: BundleSettings,
    pub node_bundle: BundleSettings,
    /// Solve the whole problem by branch-and-prune when `k` is at most this.
    pub bnp_root_k: usize,
    /// Finish a node by branch-and-prune when its `k` is at most this.
    pub bnp_node_k: usize,
    /// Nodes evaluated concurrently; 1 is fully sequential.
    pub threads: usize,
    /// Record one [`NodeEvent`] per node.
    pub trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            time_limit: Some(Duration::from_secs(3 * 3600)),
            root_bundle: BundleSettings::default(),
            node_bundle: BundleSettings {
                max_evals: 10,
                ..BundleSettings::default()
            },
            bnp_root_k: 10,
            bnp_node_k: 5,
            threads: 1,
            trace: false,
        }
    }
}

impl SolverConfig {
    /// Same search with the cuts switched off, i.e. plain SDP bounds.
    pub fn without_cuts(mut self) -> Self {
        self.root_bundle.use_cuts = false;
        self.node_bundle.use_cuts = false;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Optimal,
    TimeLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NodeAction {
    Branch,
    Prune,
    Leaf,
}

#[derive(Debug, Clone, Serialize)]
pub struct NodeEvent {
    pub id: usize,
    pub parent: Option<usize>,
    /// Item fixed when this node was created, in original indexing.
    pub fixed: Option<(usize, bool)>,
    pub bound: f64,
    pub incumbent: i64,
    pub action: NodeAction,
    /// Oracle evaluations of this node's bundle run.
    pub bundle: Vec<BundleEvent>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub best: Incumbent,
    pub root_bound: f64,
    /// `100 (root_bound − value) / value`; zero when both are zero.
    pub root_gap_percent: f64,
    pub nodes: usize,
    pub time_ms: u64,
    /// Interior-point solves.
    pub evals: usize,
    pub trace: Vec<NodeEvent>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SolveError {
    #[error("infeasible: k = {k} but at most {k_max} items fit")]
    Infeasible { k: usize, k_max: usize },
}

/// Subproblem: items in `free` (original indices) are undecided, those in
/// `ones` are taken; everything else is excluded.
#[derive(Debug, Clone)]
struct Node {
    id: usize,
    parent: Option<usize>,
    fixed: Option<(usize, bool)>,
    depth: usize,
    bound: f64,
    ones: Vec<usize>,
    free: Vec<usize>,
    reduced: Instance,
}

impl Node {
    /// Maps a point of `reduced` back to the original items.
    fn lift(&self, n: usize, local: &[bool]) -> Vec<bool> {
        let mut x = vec![false; n];
        for &j in &self.ones {
            x[j] = true;
        }
        for (&j, &v) in self.free.iter().zip(local) {
            x[j] |= v;
        }
        x
    }

    fn fix(&self, local: usize, value: bool, id: usize) -> Node {
        let reduced = self.reduced.fix_variable(local, value).expect("callers fix only feasible items");
        let mut free = self.free.clone();
        let j = free.remove(local);
        let mut ones = self.ones.clone();
        if value {
            ones.push(j);
        }
        Node {
            id,
            parent: Some(self.id),
            fixed: Some((j, value)),
            depth: self.depth + 1,
            bound: self.bound,
            ones,
            free,
            reduced,
        }
    }

    /// Drops items that cannot be part of any feasible completion and, when
    /// the capacity leaves no slack, takes the items that every feasible
    /// completion must contain. `false` if no completion exists.
    fn presolve(&mut self) -> bool {
        loop {
            let inst = &self.reduced;
            let (n, k) = (inst.n(), inst.k());
            if k > n {
                return false;
            }
            if k == 0 {
                return true;
            }
            let prep = preprocess(inst);
            if prep.k_max < k {
                return false;
            }
            let order = inst.items_by_weight();
            let kth = inst.weight(order[k - 1]);
            let slack = inst.capacity() - prep.b_prime;
            // Weights above kth + slack cannot join the k−1 lightest others.
            let mut drop: Vec<usize> = (0..n).filter(|&j| inst.weight(j) > kth + slack).collect();
            let mut take: Vec<usize> = Vec::new();
            if slack == 0 {
                take = (0..n).filter(|&j| inst.weight(j) < kth).collect();
            }
            if drop.is_empty() && take.is_empty() {
                return true;
            }
            drop.sort_unstable();
            take.sort_unstable();
            // Remove from the highest local index so earlier ones stay valid.
            let mut all: Vec<(usize, bool)> = drop.iter().map(|&j| (j, false)).chain(take.iter().map(|&j| (j, true))).collect();
            all.sort_unstable_by(|a, b| b.0.cmp(&a.0));
            for (j, v) in all {
                let child = self.fix(j, v, self.id);
                self.reduced = child.reduced;
                self.free = child.free;
                self.ones = child.ones;
            }
        }
    }
}

/// Heap entry: larger bound first, then deeper, then older.
struct Queued(Node);

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .bound
            .total_cmp(&other.0.bound)
            .then(self.0.depth.cmp(&other.0.depth))
            .then(other.0.id.cmp(&self.0.id))
    }
}

/// What evaluating a node produced, before it is merged into the search.
struct Outcome {
    bound: f64,
    /// Best point found, in original indexing.
    found: Option<Incumbent>,
    action: NodeAction,
    /// Local index to branch on.
    branch: Option<usize>,
    evals: usize,
    complete: bool,
    node: Node,
    bundle: Vec<BundleEvent>,
}

struct Context<'a> {
    root: &'a Instance,
    config: &'a SolverConfig,
    deadline: Option<Instant>,
}

pub fn solve(inst: &Instance, config: &SolverConfig) -> Result<SolveReport, SolveError> {
    let start = Instant::now();
    let ctx = Context {
        root: inst,
        config,
        deadline: config.time_limit.map(|d| start + d),
    };
    let n = inst.n();
    let prep = preprocess(inst);
    if let Status::Infeasible = prep.status {
        return Err(SolveError::Infeasible { k: inst.k(), k_max: prep.k_max });
    }
    let mut incumbent = primal_heuristic(inst, &prep).expect("k <= k_max");

    let mut root = Node {
        id: 0,
        parent: None,
        fixed: None,
        depth: 0,
        bound: f64::INFINITY,
        ones: Vec::new(),
        free: (0..n).collect(),
        reduced: inst.clone(),
    };
    let mut evals = 0;
    let root_bound;
    let mut trace = Vec::new();
    let mut root_trace = Vec::new();
    let mut complete = true;
    let mut nodes = 1;

    let feasible = root.presolve();
    debug_assert!(feasible, "preprocess already ruled out infeasibility");
    if let Some(leaf) = solve_leaf(&root, 0, &ctx) {
        // k = 0, k = 1, or every free item has to be taken.
        let (found, done) = leaf;
        if let Some(f) = found {
            incumbent = better(incumbent, f);
        }
        complete &= done;
        root_bound = incumbent.value as f64;
        push_event(&mut trace, config, &root, root_bound, incumbent.value, NodeAction::Leaf, Vec::new());
    } else {
        let relax = build_padded(&root.reduced).expect("presolved root is feasible");
        let local_inc = primal_heuristic(&root.reduced, &preprocess(&root.reduced)).ok();
        let res = bundle::minimize(&relax, f64::NEG_INFINITY, &config.root_bundle);
        let (bound, x_frac) = match res {
            Ok(r) => {
                evals += r.evals;
                root_trace = r.trace;
                (r.bound, extract_fractional(&r.x, &relax))
            }
            Err(_) => (f64::INFINITY, vec![0.5; root.reduced.n()]),
        };
        root_bound = bound;
        root.bound = bound;
        if let Some(v) = varfix_heuristic(&root.reduced, &x_frac, local_inc.as_ref()) {
            let lifted = Incumbent::new(inst, root.lift(n, &v.x), v.source);
            incumbent = better(incumbent, lifted);
        }
        if inst.k() <= config.bnp_root_k {
            let (found, done) = prune::branch_and_prune_until(&root.reduced, None, ctx.deadline);
            if let Some(f) = found {
                incumbent = better(incumbent, Incumbent::new(inst, root.lift(n, &f.x), Source::BranchLeaf));
            }
            complete &= done;
            push_event(&mut trace, config, &root, bound, incumbent.value, NodeAction::Leaf, root_trace);
        } else if bound < incumbent.value as f64 + 1.0 {
            push_event(&mut trace, config, &root, bound, incumbent.value, NodeAction::Prune, root_trace);
        } else {
            push_event(&mut trace, config, &root, bound, incumbent.value, NodeAction::Branch, root_trace);
            let v = most_fractional(&x_frac);
            let mut heap = BinaryHeap::new();
            let mut next_id = 1;
            push_children(&mut heap, &root, v, &mut next_id);
            let (explored, done, extra_evals) = run_queue(&ctx, heap, next_id, &mut incumbent, &mut trace);
            nodes += explored;
            complete &= done;
            evals += extra_evals;
        }
    }

    let value = incumbent.value as f64;
    let root_gap_percent = if incumbent.value > 0 {
        100.0 * (root_bound - value) / value
    } else if (root_bound - value).abs() < 1e-9 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(SolveReport {
        status: if complete { SolveStatus::Optimal } else { SolveStatus::TimeLimit },
        best: incumbent,
        root_bound,
        root_gap_percent,
        nodes,
        time_ms: start.elapsed().as_millis() as u64,
        evals,
        trace,
    })
}

/// Processes the queue until it empties or time runs out. Returns nodes
/// explored, whether the search finished, and oracle evaluations.
fn run_queue(
    ctx: &Context,
    mut heap: BinaryHeap<Queued>,
    mut next_id: usize,
    incumbent: &mut Incumbent,
    trace: &mut Vec<NodeEvent>,
) -> (usize, bool, usize) {
    let threads = ctx.config.threads.max(1);
    let pool = (threads > 1).then(|| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool")
    });
    let mut explored = 0;
    let mut evals = 0;
    let mut complete = true;
    while !heap.is_empty() {
        if ctx.deadline.is_some_and(|d| Instant::now() >= d) {
            return (explored, false, evals);
        }
        let batch: Vec<Node> = (0..threads).map_while(|_| heap.pop().map(|q| q.0)).collect();
        explored += batch.len();
        let floor = incumbent.value;
        let outcomes: Vec<Outcome> = match &pool {
            Some(p) => p.install(|| {
                use rayon::prelude::*;
                batch.into_par_iter().map(|node| evaluate(ctx, node, floor)).collect()
            }),
            None => batch.into_iter().map(|node| evaluate(ctx, node, floor)).collect(),
        };
        for out in outcomes {
            evals += out.evals;
            complete &= out.complete;
            if let Some(f) = out.found {
                *incumbent = better(incumbent.clone(), f);
            }
            let mut node = out.node;
            node.bound = out.bound;
            let action = match (out.action, out.branch) {
                (NodeAction::Branch, Some(v)) if out.bound >= incumbent.value as f64 + 1.0 => {
                    push_children(&mut heap, &node, v, &mut next_id);
                    NodeAction::Branch
                }
                (NodeAction::Branch, _) => NodeAction::Prune,
                (a, _) => a,
            };
            push_event(trace, ctx.config, &node, out.bound, incumbent.value, action, out.bundle);
        }
    }
    (explored, complete, evals)
}

/// Bounds and explores one node against the incumbent value `floor`.
fn evaluate(ctx: &Context, mut node: Node, floor: i64) -> Outcome {
    let n = ctx.root.n();
    let lower = floor as f64 + 1.0;
    let pruned = |node: Node, bound: f64, evals: usize, bundle: Vec<BundleEvent>| Outcome {
        bound,
        found: None,
        action: NodeAction::Prune,
        branch: None,
        evals,
        complete: true,
        node,
        bundle,
    };
    if node.bound < lower || !node.presolve() {
        let b = node.bound;
        return pruned(node, b, 0, Vec::new());
    }
    if let Some((found, done)) = solve_leaf(&node, ctx.config.bnp_node_k, ctx) {
        let found = found.map(|f| Incumbent::new(ctx.root, node.lift(n, &f.x), f.source));
        let b = found.as_ref().map_or(node.bound, |f| f.value as f64);
        return Outcome {
            bound: b,
            found,
            action: NodeAction::Leaf,
            branch: None,
            evals: 0,
            complete: done,
            node,
            bundle: Vec::new(),
        };
    }

    let Ok(relax) = build_padded(&node.reduced) else {
        let b = node.bound;
        return pruned(node, b, 0, Vec::new());
    };
    // Only completions beating `floor` matter, in the node's own offset.
    let res = bundle::minimize(&relax, floor as f64, &ctx.config.node_bundle);
    let (bound, x_frac, evals, bundle) = match res {
        Ok(r) => (r.bound.min(node.bound), extract_fractional(&r.x, &relax), r.evals, r.trace),
        // Keep the inherited bound; branch on the first free item.
        Err(_) => (node.bound, vec![0.5; node.reduced.n()], 1, Vec::new()),
    };
    let bundle = if ctx.config.trace { bundle } else { Vec::new() };
    if bound < lower {
        return pruned(node, bound, evals, bundle);
    }
    let found = varfix_heuristic(&node.reduced, &x_frac, None)
        .map(|v| Incumbent::new(ctx.root, node.lift(n, &v.x), Source::VarFix));
    Outcome {
        bound,
        found,
        action: NodeAction::Branch,
        branch: Some(most_fractional(&x_frac)),
        evals,
        complete: true,
        node,
        bundle,
    }
}

/// Nodes that need no relaxation: `k = 0`, `k = 1`, all items taken, or `k`
/// small enough for branch-and-prune. `None` for ordinary nodes. The
/// returned point is in the node's local indexing.
fn solve_leaf(node: &Node, bnp_k: usize, ctx: &Context) -> Option<(Option<Incumbent>, bool)> {
    let inst = &node.reduced;
    let (n, k) = (inst.n(), inst.k());
    if k == 0 || k == n || k == 1 || k <= bnp_k {
        let found = match k {
            0 => Some(Incumbent::new(inst, vec![false; n], Source::BranchLeaf)),
            _ if k == n => {
                let all = vec![true; n];
                inst.is_feasible(&all).then(|| Incumbent::new(inst, all, Source::BranchLeaf))
            }
            1 => (0..n)
                .filter(|&j| inst.weight(j) <= inst.capacity())
                .max_by_key(|&j| (inst.profit(j, j), std::cmp::Reverse(j)))
                .map(|j| {
                    let mut x = vec![false; n];
                    x[j] = true;
                    Incumbent::new(inst, x, Source::BranchLeaf)
                }),
            _ => {
                let (found, done) = prune::branch_and_prune_until(inst, None, ctx.deadline);
                return Some((found, done));
            }
        };
        return Some((found, true));
    }
    None
}

/// `argmin_j |1/2 − x_j|`, ties to the lowest index.
fn most_fractional(x: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in x.iter().enumerate() {
        if (0.5 - v).abs() < (0.5 - x[best]).abs() {
            best = j;
        }
    }
    best
}

fn push_children(heap: &mut BinaryHeap<Queued>, node: &Node, v: usize, next_id: &mut usize) {
    heap.push(Queued(node.fix(v, false, *next_id)));
    *next_id += 1;
    if node.reduced.weight(v) <= node.reduced.capacity() && node.reduced.k() > 0 {
        heap.push(Queued(node.fix(v, true, *next_id)));
        *next_id += 1;
    }
}

fn better(a: Incumbent, b: Incumbent) -> Incumbent {
    if b.value > a.value {
        b
    } else {
        a
    }
}

fn push_event(
    trace: &mut Vec<NodeEvent>,
    config: &SolverConfig,
    node: &Node,
    bound: f64,
    incumbent: i64,
    action: NodeAction,
    bundle: Vec<BundleEvent>,
) {
    if config.trace {
        trace.push(NodeEvent {
            id: node.id,
            parent: node.parent,
            fixed: node.fixed,
            bound,
            incumbent,
            action,
            bundle,
        });
    }
}
