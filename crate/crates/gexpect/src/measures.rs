//! Exhaustive enumeration of the adversary's volatility selections.
//!
//! A selection assigns one grid volatility to every node the adversary can
//! reach on a non-recombined tree; under a fixed selection the tree carries an
//! ordinary linear expectation (all branch weights 1/2). The worst-case value
//! produced by backward induction must equal the maximum of these linear
//! expectations over all selections — enumerating them exactly is the oracle
//! this module provides, together with the capacity (the maximal probability
//! of an event) and the pasting of selections across a measurable partition.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::AdaptedField;
use crate::payoff::{PathPayoff, PathState, Payoff};
use crate::tree::ScenarioTree;

/// Default bound on how many selections an enumeration may materialize.
pub const DEFAULT_SELECTION_CAP: u128 = 100_000;

/// A volatility choice at every decision node.
///
/// `choices[k][v]` is the grid index the adversary plays at node `v` of level
/// `k` (levels `0..n_steps`), or `None` where the selection does not reach the
/// node. Only reachable choices are ever read.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VolSelection {
    choices: Vec<Vec<Option<u8>>>,
}

impl VolSelection {
    /// A selection with no choices assigned.
    pub fn empty(tree: &ScenarioTree) -> Self {
        Self {
            choices: (0..tree.n_steps())
                .map(|k| vec![None; tree.level_len(k)])
                .collect(),
        }
    }

    /// The constant selection playing grid index `vol` everywhere.
    pub fn constant(tree: &ScenarioTree, vol: usize) -> Result<Self> {
        if vol >= tree.grid().len() {
            return Err(Error::InconsistentSelection(format!(
                "grid index {vol} out of range"
            )));
        }
        Ok(Self {
            choices: (0..tree.n_steps())
                .map(|k| vec![Some(vol as u8); tree.level_len(k)])
                .collect(),
        })
    }

    pub fn set(&mut self, level: usize, node: usize, vol: usize) {
        self.choices[level][node] = Some(vol as u8);
    }

    pub fn get(&self, level: usize, node: usize) -> Option<usize> {
        self.choices[level][node].map(usize::from)
    }

    fn shape_matches(&self, tree: &ScenarioTree) -> bool {
        self.choices.len() == tree.n_steps()
            && self
                .choices
                .iter()
                .enumerate()
                .all(|(k, lvl)| lvl.len() == tree.level_len(k))
    }
}

/// A path event on the tree, described by a predicate on terminal path states.
#[derive(Clone)]
pub struct TreeEvent {
    label: String,
    pred: Arc<dyn Fn(&PathState<'_>) -> bool + Send + Sync>,
}

impl fmt::Debug for TreeEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TreeEvent({})", self.label)
    }
}

impl TreeEvent {
    pub fn custom(
        label: impl Into<String>,
        pred: impl Fn(&PathState<'_>) -> bool + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            pred: Arc::new(pred),
        }
    }

    pub fn all() -> Self {
        Self::custom("all", |_| true)
    }

    pub fn none() -> Self {
        Self::custom("none", |_| false)
    }

    /// Terminal position lies in `set`.
    pub fn position_in(set: crate::interval::IntervalUnion) -> Self {
        Self::custom(format!("pos in {set}"), move |s| {
            s.terminal_position.map_or(false, |x| set.contains(x))
        })
    }

    /// Terminal position equals `x` up to `1e-12`.
    pub fn position_eq(x: f64) -> Self {
        Self::custom(format!("pos = {x}"), move |s| {
            s.terminal_position
                .map_or(false, |p| (p - x).abs() <= 1e-12)
        })
    }

    /// Terminal quadratic variation lies in `set`.
    pub fn qv_in(set: crate::interval::IntervalUnion) -> Self {
        Self::custom(format!("qv in {set}"), move |s| {
            s.terminal_qv.map_or(false, |q| set.contains(q))
        })
    }

    /// Position at lattice time `t` lies in `set`.
    pub fn position_at_in(t: f64, set: crate::interval::IntervalUnion) -> Self {
        Self::custom(format!("pos(t={t}) in {set}"), move |s| {
            let (dt, xs) = match (s.dt, s.positions) {
                (Some(dt), Some(xs)) => (dt, xs),
                _ => return false,
            };
            let level = (t / dt).round() as usize;
            level < xs.len() && set.contains(xs[level])
        })
    }

    pub fn complement(&self) -> Self {
        let pred = self.pred.clone();
        Self::custom(format!("not({})", self.label), move |s| !pred(s))
    }

    pub fn union(&self, other: &Self) -> Self {
        let (a, b) = (self.pred.clone(), other.pred.clone());
        Self::custom(format!("({}) or ({})", self.label, other.label), move |s| {
            a(s) || b(s)
        })
    }

    pub fn intersect(&self, other: &Self) -> Self {
        let (a, b) = (self.pred.clone(), other.pred.clone());
        Self::custom(
            format!("({}) and ({})", self.label, other.label),
            move |s| a(s) && b(s),
        )
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn holds(&self, s: &PathState<'_>) -> bool {
        (self.pred)(s)
    }

    /// The `{0, 1}` indicator payoff of the event.
    pub fn indicator(&self) -> Payoff {
        let pred = self.pred.clone();
        Payoff::PathFn(PathPayoff::new(format!("1[{}]", self.label), move |s| {
            Ok(if pred(s) { 1.0 } else { 0.0 })
        }))
    }
}

fn require_paths(tree: &ScenarioTree) -> Result<()> {
    if tree.is_paths() {
        Ok(())
    } else {
        Err(Error::PathsRequired)
    }
}

/// Number of distinct selections of the whole tree.
///
/// Within a selection only the two children of the chosen volatility are
/// reachable, so the reachable nodes form a binary subtree and the count
/// satisfies `c_N = 1`, `c_k = m * c_{k+1}^2`.
pub fn selection_count(tree: &ScenarioTree) -> Result<u128> {
    require_paths(tree)?;
    subtree_selection_count(tree, tree.n_steps(), u128::MAX).ok_or(Error::SelectionCapExceeded {
        projected: u128::MAX,
        cap: u128::MAX,
    })
}

fn subtree_selection_count(tree: &ScenarioTree, depth: usize, cap: u128) -> Option<u128> {
    let m = tree.grid().len() as u128;
    let mut c: u128 = 1;
    for _ in 0..depth {
        c = m.checked_mul(c.checked_mul(c)?)?;
        if c > cap {
            return None;
        }
    }
    Some(c)
}

struct Enumerator<'a> {
    tree: &'a ScenarioTree,
    queue: VecDeque<(usize, usize)>,
    current: VolSelection,
    out: Vec<VolSelection>,
}

impl Enumerator<'_> {
    /// Depth-first over the queued decision nodes: the front node's choice is
    /// most significant, children are enqueued `+` before `-`, so output
    /// order is deterministic and lexicographic in that node order.
    fn run(&mut self) {
        let Some((level, node)) = self.queue.pop_front() else {
            self.out.push(self.current.clone());
            return;
        };
        let m = self.tree.grid().len();
        for vol in 0..m {
            self.current.choices[level][node] = Some(vol as u8);
            if level + 1 < self.tree.n_steps() {
                let up = self.tree.child(level, node, vol, false) as usize;
                let down = self.tree.child(level, node, vol, true) as usize;
                self.queue.push_back((level + 1, up));
                self.queue.push_back((level + 1, down));
                self.run();
                self.queue.pop_back();
                self.queue.pop_back();
            } else {
                self.run();
            }
        }
        self.current.choices[level][node] = None;
        self.queue.push_front((level, node));
    }
}

/// All selections of the tree, in deterministic order, guarded by `cap`.
pub fn enumerate_selections(tree: &ScenarioTree, cap: u128) -> Result<Vec<VolSelection>> {
    require_paths(tree)?;
    let projected = subtree_selection_count(tree, tree.n_steps(), u128::MAX).ok_or(
        Error::SelectionCapExceeded {
            projected: u128::MAX,
            cap,
        },
    )?;
    if projected > cap {
        return Err(Error::SelectionCapExceeded { projected, cap });
    }
    let mut e = Enumerator {
        tree,
        queue: VecDeque::from([(0usize, 0usize)]),
        current: VolSelection::empty(tree),
        out: Vec::with_capacity(projected as usize),
    };
    e.run();
    Ok(e.out)
}

/// Selections of the subtree rooted at `(level, node)`, `cap`-guarded.
pub fn enumerate_subtree_selections(
    tree: &ScenarioTree,
    level: usize,
    node: usize,
    cap: u128,
) -> Result<Vec<VolSelection>> {
    require_paths(tree)?;
    let depth = tree.n_steps() - level;
    let projected = subtree_selection_count(tree, depth, u128::MAX).ok_or(
        Error::SelectionCapExceeded {
            projected: u128::MAX,
            cap,
        },
    )?;
    if projected > cap {
        return Err(Error::SelectionCapExceeded { projected, cap });
    }
    let mut e = Enumerator {
        tree,
        queue: VecDeque::from([(level, node)]),
        current: VolSelection::empty(tree),
        out: Vec::with_capacity(projected as usize),
    };
    if level == tree.n_steps() {
        return Ok(vec![e.current]);
    }
    e.run();
    Ok(e.out)
}

struct PathBufs {
    positions: Vec<f64>,
    qvs: Vec<f64>,
    nodes: Vec<u32>,
}

impl PathBufs {
    fn rooted(tree: &ScenarioTree, level: usize, node: usize) -> Self {
        let mut b = Self {
            positions: Vec::with_capacity(tree.n_steps() + 1),
            qvs: Vec::with_capacity(tree.n_steps() + 1),
            nodes: Vec::with_capacity(tree.n_steps() + 1),
        };
        for k in 0..=level {
            let a = tree.ancestor(node, level, k);
            b.positions.push(tree.position(k, a));
            b.qvs.push(tree.qv(k, a).expect("path trees track qv"));
            b.nodes.push(a as u32);
        }
        b
    }

    fn push(&mut self, x: f64, q: f64, node: u32) {
        self.positions.push(x);
        self.qvs.push(q);
        self.nodes.push(node);
    }

    fn pop(&mut self) {
        self.positions.pop();
        self.qvs.pop();
        self.nodes.pop();
    }
}

fn walk_expect(
    tree: &ScenarioTree,
    sel: &VolSelection,
    p: &Payoff,
    level: usize,
    node: usize,
    bufs: &mut PathBufs,
) -> Result<f64> {
    if level == tree.n_steps() {
        return p.eval(&PathState::path(
            tree.dt(),
            &bufs.positions,
            &bufs.qvs,
            &bufs.nodes,
        ));
    }
    let vol = sel.choices[level][node]
        .map(usize::from)
        .ok_or_else(|| {
            Error::InconsistentSelection(format!(
                "no choice at reachable node {node} of level {level}"
            ))
        })?;
    let mut acc = 0.0;
    for down in [false, true] {
        let child = tree.child(level, node, vol, down) as usize;
        bufs.push(
            tree.position(level + 1, child),
            tree.qv(level + 1, child).expect("path trees track qv"),
            child as u32,
        );
        acc += 0.5 * walk_expect(tree, sel, p, level + 1, child, bufs)?;
        bufs.pop();
    }
    Ok(acc)
}

/// Linear expectation of `p` under a fixed selection.
pub fn expect_under(tree: &ScenarioTree, sel: &VolSelection, p: &Payoff) -> Result<f64> {
    require_paths(tree)?;
    if !sel.shape_matches(tree) {
        return Err(Error::InconsistentSelection(
            "selection shape does not match the tree".into(),
        ));
    }
    let mut bufs = PathBufs::rooted(tree, 0, 0);
    walk_expect(tree, sel, p, 0, 0, &mut bufs)
}

/// Conditional linear expectation of `p` given the node `(level, node)`,
/// under a fixed selection (its choices below the node).
pub fn expect_under_given(
    tree: &ScenarioTree,
    sel: &VolSelection,
    p: &Payoff,
    level: usize,
    node: usize,
) -> Result<f64> {
    require_paths(tree)?;
    if !sel.shape_matches(tree) {
        return Err(Error::InconsistentSelection(
            "selection shape does not match the tree".into(),
        ));
    }
    let mut bufs = PathBufs::rooted(tree, level, node);
    walk_expect(tree, sel, p, level, node, &mut bufs)
}

/// The capacity of an event: the largest probability any selection gives it.
/// Returns the value and the first selection attaining it (enumeration
/// order breaks ties).
pub fn capacity(tree: &ScenarioTree, event: &TreeEvent, cap: u128) -> Result<(f64, VolSelection)> {
    let indicator = event.indicator();
    let selections = enumerate_selections(tree, cap)?;
    let mut best = f64::NEG_INFINITY;
    let mut arg = None;
    for sel in selections {
        let v = expect_under(tree, &sel, &indicator)?;
        if v > best {
            best = v;
            arg = Some(sel);
        }
    }
    Ok((best, arg.expect("at least one selection exists")))
}

/// Outcome of checking the worst-case representation at every node.
#[derive(Debug, Clone)]
pub struct RepresentationReport {
    /// Largest `|max over selections - backward induction|` over all nodes.
    pub max_gap: f64,
    pub worst_level: usize,
    pub worst_node: usize,
    pub checked_nodes: usize,
}

/// Per-node gaps `|max over subtree selections of E_Q[p | node] - Ê_level[p]|`
/// across one level: the nodewise distance between the brute-force worst case
/// and backward induction.
pub fn representation_gaps(
    tree: &ScenarioTree,
    p: &Payoff,
    level: usize,
    cap: u128,
) -> Result<Vec<f64>> {
    require_paths(tree)?;
    if level > tree.n_steps() {
        return Err(Error::InvalidParameter(format!(
            "level {level} exceeds the horizon level {}",
            tree.n_steps()
        )));
    }
    let fields = crate::tree::backward_induct(tree, p)?;
    representation_gaps_against(tree, p, &fields, level, cap)
}

fn representation_gaps_against(
    tree: &ScenarioTree,
    p: &Payoff,
    fields: &[AdaptedField],
    level: usize,
    cap: u128,
) -> Result<Vec<f64>> {
    (0..tree.level_len(level))
        .map(|node| {
            let mut best = f64::NEG_INFINITY;
            for sel in enumerate_subtree_selections(tree, level, node, cap)? {
                let v = expect_under_given(tree, &sel, p, level, node)?;
                if v > best {
                    best = v;
                }
            }
            Ok((best - fields[level].get(node)).abs())
        })
        .collect()
}

/// Verifies, node by node at every level, that backward induction equals the
/// maximum over subtree selections of the conditional linear expectation.
pub fn verify_representation(
    tree: &ScenarioTree,
    p: &Payoff,
    cap: u128,
) -> Result<RepresentationReport> {
    require_paths(tree)?;
    let fields = crate::tree::backward_induct(tree, p)?;
    let mut report = RepresentationReport {
        max_gap: 0.0,
        worst_level: 0,
        worst_node: 0,
        checked_nodes: 0,
    };
    for level in 0..=tree.n_steps() {
        for (node, gap) in representation_gaps_against(tree, p, &fields, level, cap)?
            .into_iter()
            .enumerate()
        {
            report.checked_nodes += 1;
            if gap > report.max_gap {
                report.max_gap = gap;
                report.worst_level = level;
                report.worst_node = node;
            }
        }
    }
    Ok(report)
}

/// Truth value of a level-`level` measurable event at each node of the level.
///
/// Fails with [`Error::InvalidPartition`] when some terminal descendants of a
/// node disagree, i.e. the event is not determined by the level.
pub fn event_at_level(tree: &ScenarioTree, event: &TreeEvent, level: usize) -> Result<Vec<bool>> {
    require_paths(tree)?;
    let n = tree.n_steps();
    let mut truth: Vec<Option<bool>> = vec![None; tree.level_len(level)];
    let mut positions = Vec::new();
    let mut qvs = Vec::new();
    let mut nodes = Vec::new();
    for terminal in 0..tree.level_len(n) {
        tree.fill_path(terminal, &mut positions, &mut qvs, &mut nodes);
        let s = PathState::path(tree.dt(), &positions, &qvs, &nodes);
        let value = event.holds(&s);
        let anc = tree.ancestor(terminal, n, level);
        match truth[anc] {
            None => truth[anc] = Some(value),
            Some(prev) if prev != value => {
                return Err(Error::InvalidPartition(format!(
                    "event '{}' is not determined at level {level}",
                    event.label()
                )))
            }
            _ => {}
        }
    }
    Ok(truth.into_iter().map(|t| t.expect("level covered")).collect())
}

/// Pastes selections across a level-`level` measurable partition: before the
/// cut all parts must agree; after it each node follows the part owning its
/// level ancestor. The result is validated to carry a choice at every node it
/// reaches.
pub fn paste(
    tree: &ScenarioTree,
    parts: &[(TreeEvent, VolSelection)],
    level: usize,
) -> Result<VolSelection> {
    require_paths(tree)?;
    if parts.is_empty() || level > tree.n_steps() {
        return Err(Error::InvalidPartition(
            "need at least one part and a cut level on the lattice".into(),
        ));
    }
    for (_, sel) in parts {
        if !sel.shape_matches(tree) {
            return Err(Error::InconsistentSelection(
                "selection shape does not match the tree".into(),
            ));
        }
    }

    let truths: Vec<Vec<bool>> = parts
        .iter()
        .map(|(event, _)| event_at_level(tree, event, level))
        .collect::<Result<_>>()?;
    let mut owner: Vec<usize> = Vec::with_capacity(tree.level_len(level));
    for node in 0..tree.level_len(level) {
        let owners: Vec<usize> = (0..parts.len()).filter(|&p| truths[p][node]).collect();
        match owners.as_slice() {
            [single] => owner.push(*single),
            [] => {
                return Err(Error::InvalidPartition(format!(
                    "no event covers node {node} of level {level}"
                )))
            }
            _ => {
                return Err(Error::InvalidPartition(format!(
                    "events overlap at node {node} of level {level}"
                )))
            }
        }
    }

    let mut pasted = VolSelection::empty(tree);
    for k in 0..level.min(tree.n_steps()) {
        for node in 0..tree.level_len(k) {
            let mut agreed: Option<u8> = None;
            for (_, sel) in parts {
                if let Some(c) = sel.choices[k][node] {
                    match agreed {
                        None => agreed = Some(c),
                        Some(prev) if prev != c => return Err(Error::PasteBaseMismatch),
                        _ => {}
                    }
                }
            }
            pasted.choices[k][node] = agreed;
        }
    }
    for k in level..tree.n_steps() {
        for node in 0..tree.level_len(k) {
            let anc = tree.ancestor(node, k, level);
            pasted.choices[k][node] = parts[owner[anc]].1.choices[k][node];
        }
    }

    // Reachability walk: every node the pasted selection reaches must carry a
    // choice.
    let mut stack = vec![(0usize, 0usize)];
    while let Some((k, v)) = stack.pop() {
        if k == tree.n_steps() {
            continue;
        }
        let vol = pasted.choices[k][v].map(usize::from).ok_or_else(|| {
            Error::InconsistentSelection(format!(
                "pasted selection reaches node {v} of level {k} without a choice"
            ))
        })?;
        stack.push((k + 1, tree.child(k, v, vol, false) as usize));
        stack.push((k + 1, tree.child(k, v, vol, true) as usize));
    }
    Ok(pasted)
}
