//! Lattice stopping rules, dyadic coarsening, and worst-case optional
//! stopping.
//!
//! A rule marks nodes of a non-recombined tree; its stopping time is the
//! first marked level along a path, with the horizon as implicit fallback.
//! Coarsening a rule to a dyadic sublattice rounds each stopping level up to
//! the next multiple of `n_steps / 2^n` (level 0 rounds to the first multiple,
//! so the coarsened rule always stops strictly after an immediate stop),
//! which overshoots by at most `2^-n` of the horizon — exactly, in integer
//! level arithmetic.
//!
//! For first-exit times the worst-case stopping error can instead be computed
//! on a recombined tree by an absorbing decomposition: alive states evolve
//! until they leave the exit set, and a stopped state launches a short
//! auxiliary induction from its stop level to its rounded level. That keeps
//! the computation polynomial in the step count where path enumeration would
//! be exponential.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::field::AdaptedField;
use crate::interval::IntervalUnion;
use crate::payoff::{PathPayoff, Payoff};
use crate::tree::{backward_induct, ScenarioTree};

const NO_STOP: usize = usize::MAX;

/// A stopping rule: node markings whose first hit along a path stops it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoppingRule {
    stop: Vec<Vec<bool>>,
}

fn require_paths(tree: &ScenarioTree) -> Result<()> {
    if tree.is_paths() {
        Ok(())
    } else {
        Err(Error::PathsRequired)
    }
}

impl StoppingRule {
    /// The rule that never fires: its stopping time is the horizon.
    pub fn never(tree: &ScenarioTree) -> Self {
        Self {
            stop: (0..=tree.n_steps())
                .map(|k| vec![false; tree.level_len(k)])
                .collect(),
        }
    }

    /// The deterministic time `level * dt`.
    pub fn at_level(tree: &ScenarioTree, level: usize) -> Result<Self> {
        if level > tree.n_steps() {
            return Err(Error::InvalidParameter(format!(
                "stop level {level} exceeds the horizon level {}",
                tree.n_steps()
            )));
        }
        let mut rule = Self::never(tree);
        rule.stop[level].iter_mut().for_each(|s| *s = true);
        Ok(rule)
    }

    /// First exit from `set`: fires wherever the position leaves it.
    pub fn exit_time(tree: &ScenarioTree, set: &IntervalUnion) -> Self {
        Self {
            stop: (0..=tree.n_steps())
                .map(|k| {
                    (0..tree.level_len(k))
                        .map(|v| !set.contains(tree.position(k, v)))
                        .collect()
                })
                .collect(),
        }
    }

    /// Pointwise earlier of two rules (`min` of the stopping times).
    pub fn min(&self, other: &StoppingRule) -> Result<StoppingRule> {
        if self.stop.len() != other.stop.len()
            || self
                .stop
                .iter()
                .zip(&other.stop)
                .any(|(a, b)| a.len() != b.len())
        {
            return Err(Error::InvalidParameter(
                "stopping rules live on different trees".into(),
            ));
        }
        Ok(StoppingRule {
            stop: self
                .stop
                .iter()
                .zip(&other.stop)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| *x || *y).collect())
                .collect(),
        })
    }

    pub fn fires(&self, level: usize, node: usize) -> bool {
        self.stop[level][node]
    }

    fn shape_matches(&self, tree: &ScenarioTree) -> bool {
        self.stop.len() == tree.n_steps() + 1
            && self
                .stop
                .iter()
                .enumerate()
                .all(|(k, lvl)| lvl.len() == tree.level_len(k))
    }

    /// Stopping level of each terminal path (the horizon when never fired).
    pub fn path_times(&self, tree: &ScenarioTree) -> Result<Vec<usize>> {
        require_paths(tree)?;
        if !self.shape_matches(tree) {
            return Err(Error::InvalidParameter(
                "stopping rule lives on a different tree".into(),
            ));
        }
        let n = tree.n_steps();
        let first = first_stop_levels(tree, self);
        Ok((0..tree.level_len(n))
            .map(|t| first[n][t].min(n))
            .collect())
    }
}

/// First stopping level at or above each node along its path, `NO_STOP` when
/// the rule has not fired yet.
fn first_stop_levels(tree: &ScenarioTree, rule: &StoppingRule) -> Vec<Vec<usize>> {
    let n = tree.n_steps();
    let mut first: Vec<Vec<usize>> = Vec::with_capacity(n + 1);
    first.push(vec![if rule.stop[0][0] { 0 } else { NO_STOP }]);
    for k in 1..=n {
        let prev = &first[k - 1];
        first.push(
            (0..tree.level_len(k))
                .map(|v| {
                    let inherited = prev[tree.parent(v)];
                    if inherited != NO_STOP {
                        inherited
                    } else if rule.stop[k][v] {
                        k
                    } else {
                        NO_STOP
                    }
                })
                .collect(),
        );
    }
    first
}

/// Whether a per-path vector of stopping levels is adapted: paths that agree
/// up to a level must agree there on whether they have stopped.
pub fn is_star_stopping(tree: &ScenarioTree, times: &[usize]) -> Result<bool> {
    require_paths(tree)?;
    let n = tree.n_steps();
    if times.len() != tree.level_len(n) {
        return Err(Error::InvalidParameter(
            "need one stopping level per terminal path".into(),
        ));
    }
    if times.iter().any(|&t| t > n) {
        return Ok(false);
    }
    for k in 0..n {
        let mut cell: Vec<Option<bool>> = vec![None; tree.level_len(k)];
        for (terminal, &time) in times.iter().enumerate() {
            let anc = tree.ancestor(terminal, n, k);
            let stopped = time <= k;
            match cell[anc] {
                None => cell[anc] = Some(stopped),
                Some(prev) if prev != stopped => return Ok(false),
                _ => {}
            }
        }
    }
    Ok(true)
}

/// Builds the rule realizing an adapted vector of per-path stopping levels.
pub fn from_path_times(tree: &ScenarioTree, times: &[usize]) -> Result<StoppingRule> {
    if !is_star_stopping(tree, times)? {
        return Err(Error::InvalidParameter(
            "per-path stopping levels are not adapted".into(),
        ));
    }
    let n = tree.n_steps();
    let mut rule = StoppingRule::never(tree);
    for (terminal, &time) in times.iter().enumerate() {
        rule.stop[time][tree.ancestor(terminal, n, time)] = true;
    }
    Ok(rule)
}

/// The level a stopping level coarsens to on the dyadic sublattice of `2^n`
/// slots: the next multiple of `n_steps / 2^n`, strictly above zero.
pub fn dyadic_level(n_steps: usize, level: usize, n: u32) -> Result<usize> {
    let slots = 1usize
        .checked_shl(n)
        .filter(|s| n_steps % s == 0)
        .ok_or_else(|| {
            Error::LatticeIncompatible(format!(
                "2^{n} dyadic slots do not divide {n_steps} steps"
            ))
        })?;
    let d = n_steps / slots;
    if level == 0 {
        return Ok(d);
    }
    Ok(d * level.div_ceil(d))
}

/// Coarsens a rule to the dyadic sublattice: the new stopping time is
/// `dyadic_level` of the old one, path by path.
pub fn dyadic(tree: &ScenarioTree, rule: &StoppingRule, n: u32) -> Result<StoppingRule> {
    require_paths(tree)?;
    dyadic_level(tree.n_steps(), 0, n)?;
    let d = tree.n_steps() >> n;
    let first = first_stop_levels(tree, rule);
    Ok(StoppingRule {
        stop: (0..=tree.n_steps())
            .map(|k| {
                (0..tree.level_len(k))
                    .map(|v| k > 0 && k % d == 0 && first[k][v] != NO_STOP)
                    .collect()
            })
            .collect(),
    })
}

/// The payoff reading a level field at a rule's stopping node: evaluating it
/// on a path yields `fields[tau](node at tau)`, with the horizon value when
/// the rule never fires.
pub fn stopped_field(
    tree: &ScenarioTree,
    fields: &[AdaptedField],
    rule: &StoppingRule,
) -> Result<Payoff> {
    require_paths(tree)?;
    let n = tree.n_steps();
    if !rule.shape_matches(tree) || fields.len() != n + 1 {
        return Err(Error::InvalidParameter(
            "fields or rule do not match the tree".into(),
        ));
    }
    for (k, f) in fields.iter().enumerate() {
        if f.level() != k || f.len() != tree.level_len(k) {
            return Err(Error::InvalidParameter(
                "fields must cover every level in order".into(),
            ));
        }
    }
    let values: Vec<Vec<f64>> = fields.iter().map(|f| f.values().to_vec()).collect();
    let stop = rule.stop.clone();
    Ok(Payoff::PathFn(PathPayoff::new("stopped field", move |s| {
        let nodes = s
            .nodes
            .ok_or(Error::MissingStateComponent("tree node indices"))?;
        for (k, &node) in nodes.iter().enumerate() {
            if k + 1 == nodes.len() || stop[k][node as usize] {
                return Ok(values[k][node as usize]);
            }
        }
        unreachable!("the final level always returns")
    })))
}

/// Node-by-node audit of worst-case optional stopping.
#[derive(Debug, Clone)]
pub struct StoppingCheck {
    /// Largest deviation of the re-inducted stopped field from the stopped
    /// conditional field, over all nodes.
    pub max_gap: f64,
    /// The deviation restricted to nodes where the earlier rule fires.
    pub stop_gap: f64,
    /// Largest deviation per level.
    pub per_level: Vec<f64>,
}

/// Verifies the worst-case optional stopping identity for `sigma <= tau`:
/// conditioning the field stopped at `tau` reproduces the field stopped at
/// `sigma` — and, level by level, the field stopped at the running minimum
/// with `tau`.
pub fn optional_stopping_check(
    tree: &ScenarioTree,
    xi: &Payoff,
    sigma: &StoppingRule,
    tau: &StoppingRule,
) -> Result<StoppingCheck> {
    require_paths(tree)?;
    if tree.coef().sigma_low_sq() <= 0.0 {
        return Err(Error::DegenerateVolatility);
    }
    let n = tree.n_steps();
    let sigma_first = first_stop_levels(tree, sigma);
    let tau_first = first_stop_levels(tree, tau);
    for t in 0..tree.level_len(n) {
        if sigma_first[n][t].min(n) > tau_first[n][t].min(n) {
            return Err(Error::RuleOrdering(format!(
                "sigma stops after tau on terminal path {t}"
            )));
        }
    }

    let m_fields = backward_induct(tree, xi)?;
    let stopped = stopped_field(tree, &m_fields, tau)?;
    let w_fields = backward_induct(tree, &stopped)?;

    let mut check = StoppingCheck {
        max_gap: 0.0,
        stop_gap: 0.0,
        per_level: vec![0.0; n + 1],
    };
    for k in 0..=n {
        for v in 0..tree.level_len(k) {
            let s = tau_first[k][v];
            let reference = if s <= k {
                m_fields[s].get(tree.ancestor(v, k, s))
            } else {
                m_fields[k].get(v)
            };
            let gap = (w_fields[k].get(v) - reference).abs();
            check.per_level[k] = check.per_level[k].max(gap);
            check.max_gap = check.max_gap.max(gap);
            if sigma_first[k][v] == k {
                check.stop_gap = check.stop_gap.max(gap);
            }
        }
    }
    Ok(check)
}

/// The accumulated quadratic variation as a field per level.
pub fn quadratic_variation(tree: &ScenarioTree) -> Result<Vec<AdaptedField>> {
    (0..=tree.n_steps())
        .map(|k| {
            let values = (0..tree.level_len(k))
                .map(|v| tree.qv(k, v))
                .collect::<Result<Vec<f64>>>()?;
            Ok(AdaptedField::new(k, values))
        })
        .collect()
}

/// One dyadic coarsening of a first-exit stopping problem.
#[derive(Debug, Clone)]
pub struct DyadicGapReport {
    pub n: u32,
    /// Levels per dyadic slot, `n_steps / 2^n`.
    pub coarse_levels: usize,
    /// Worst-case expectation of the stopped-value error
    /// `|M at the coarsened stop - M at the stop|`.
    pub gap: f64,
    /// Largest realized overshoot `coarsened level - stop level`, in levels;
    /// always at most `coarse_levels`.
    pub max_overshoot_levels: usize,
}

enum LeafMode {
    /// `|M_c(z) - M_s(w)|`: the stopped-value error.
    AbsGap,
    /// `M_c(z)`: the coarsened stopped value itself.
    Value,
}

struct AbsorbingDp<'a> {
    tree: &'a ScenarioTree,
    fields: &'a [AdaptedField],
    in_set: Vec<Vec<bool>>,
    d: usize,
}

impl AbsorbingDp<'_> {
    fn rounded(&self, s: usize) -> usize {
        if s == 0 {
            self.d
        } else {
            self.d * s.div_ceil(self.d)
        }
    }

    /// Worst-case value accrued after stopping at `(s, w)`: an induction
    /// from the rounded level `c` back to `s`, memoized per `(level, node)`.
    fn stopped_value(
        &self,
        s: usize,
        w: usize,
        mode: &LeafMode,
        memo: &mut HashMap<(usize, u32), f64>,
    ) -> f64 {
        let c = self.rounded(s);
        if c == s {
            return match mode {
                LeafMode::AbsGap => 0.0,
                LeafMode::Value => self.fields[s].get(w),
            };
        }
        let mu = match mode {
            LeafMode::AbsGap => self.fields[s].get(w),
            LeafMode::Value => 0.0,
        };
        self.subtree(s, w, c, mu, mode, memo)
    }

    fn subtree(
        &self,
        level: usize,
        node: usize,
        c: usize,
        mu: f64,
        mode: &LeafMode,
        memo: &mut HashMap<(usize, u32), f64>,
    ) -> f64 {
        if level == c {
            return match mode {
                LeafMode::AbsGap => (self.fields[c].get(node) - mu).abs(),
                LeafMode::Value => self.fields[c].get(node),
            };
        }
        if let Some(&v) = memo.get(&(level, node as u32)) {
            return v;
        }
        let m = self.tree.grid().len();
        let mut best = f64::NEG_INFINITY;
        for vol in 0..m {
            let up = self.tree.child(level, node, vol, false) as usize;
            let down = self.tree.child(level, node, vol, true) as usize;
            let v = 0.5
                * (self.subtree(level + 1, up, c, mu, mode, memo)
                    + self.subtree(level + 1, down, c, mu, mode, memo));
            if v > best {
                best = v;
            }
        }
        memo.insert((level, node as u32), best);
        best
    }

    /// Root value of the alive/stopped decomposition, plus the largest
    /// realized overshoot in levels.
    fn run(&self, mode: LeafMode) -> (f64, usize) {
        let n = self.tree.n_steps();
        let m = self.tree.grid().len();

        // Forward pass: which states are alive-reachable, and which stop
        // levels actually occur.
        let mut max_overshoot = 0usize;
        let mut alive = vec![false; 1];
        alive[0] = self.in_set[0][0];
        if !alive[0] {
            max_overshoot = self.rounded(0);
        }
        let mut alive_levels: Vec<Vec<bool>> = Vec::with_capacity(n + 1);
        alive_levels.push(alive.clone());
        for k in 0..n {
            let mut next_alive = vec![false; self.tree.level_len(k + 1)];
            for (v, &is_alive) in alive.iter().enumerate() {
                if !is_alive {
                    continue;
                }
                for vol in 0..m {
                    for down in [false, true] {
                        let child = self.tree.child(k, v, vol, down) as usize;
                        if self.in_set[k + 1][child] {
                            next_alive[child] = true;
                        } else {
                            max_overshoot = max_overshoot.max(self.rounded(k + 1) - (k + 1));
                        }
                    }
                }
            }
            alive = next_alive;
            alive_levels.push(alive.clone());
        }

        if !self.in_set[0][0] {
            let mut memo = HashMap::new();
            return (self.stopped_value(0, 0, &mode, &mut memo), max_overshoot);
        }

        // Backward pass over alive states; stopped children launch the
        // memoized auxiliary induction. In Value mode the leaf function does
        // not depend on the stop state, so the memo is shared per stop level.
        let mut values = vec![0.0; self.tree.level_len(n)];
        if let LeafMode::Value = mode {
            values
                .iter_mut()
                .enumerate()
                .for_each(|(v, slot)| *slot = self.fields[n].get(v));
        }
        for k in (0..n).rev() {
            let mut level_values = vec![0.0; self.tree.level_len(k)];
            let mut shared_memo: HashMap<(usize, u32), f64> = HashMap::new();
            for (v, slot) in level_values.iter_mut().enumerate() {
                if !alive_levels[k][v] {
                    continue;
                }
                let mut best = f64::NEG_INFINITY;
                for vol in 0..m {
                    let mut acc = 0.0;
                    for down in [false, true] {
                        let child = self.tree.child(k, v, vol, down) as usize;
                        acc += 0.5
                            * if self.in_set[k + 1][child] {
                                values[child]
                            } else {
                                match mode {
                                    LeafMode::Value => self.stopped_value(
                                        k + 1,
                                        child,
                                        &mode,
                                        &mut shared_memo,
                                    ),
                                    LeafMode::AbsGap => {
                                        let mut memo = HashMap::new();
                                        self.stopped_value(k + 1, child, &mode, &mut memo)
                                    }
                                }
                            };
                    }
                    if acc > best {
                        best = acc;
                    }
                }
                *slot = best;
            }
            values = level_values;
        }
        (values[0], max_overshoot)
    }
}

fn absorbing_dp<'a>(
    tree: &'a ScenarioTree,
    fields: &'a [AdaptedField],
    exit_set: &IntervalUnion,
    n: u32,
) -> Result<AbsorbingDp<'a>> {
    let slots = 1usize
        .checked_shl(n)
        .filter(|s| tree.n_steps() % s == 0)
        .ok_or_else(|| {
            Error::LatticeIncompatible(format!(
                "2^{n} dyadic slots do not divide {} steps",
                tree.n_steps()
            ))
        })?;
    let in_set = (0..=tree.n_steps())
        .map(|k| {
            (0..tree.level_len(k))
                .map(|v| exit_set.contains(tree.position(k, v)))
                .collect()
        })
        .collect();
    Ok(AbsorbingDp {
        tree,
        fields,
        in_set,
        d: tree.n_steps() / slots,
    })
}

/// Worst-case stopped-value errors of the dyadic coarsenings of the first
/// exit from `exit_set`, one report per requested `n`.
///
/// `xi` is inducted once into its conditional fields `M`; each report bounds
/// `|M at the coarsened exit - M at the exit|` in worst-case expectation.
/// Runs on recombined trees, where the exit time is a function of the
/// tracked state.
pub fn dyadic_stop_gaps(
    tree: &ScenarioTree,
    xi: &Payoff,
    exit_set: &IntervalUnion,
    ns: &[u32],
) -> Result<Vec<DyadicGapReport>> {
    let fields = backward_induct(tree, xi)?;
    ns.iter()
        .map(|&n| {
            let dp = absorbing_dp(tree, &fields, exit_set, n)?;
            let (gap, max_overshoot_levels) = dp.run(LeafMode::AbsGap);
            if max_overshoot_levels > dp.d {
                return Err(Error::CertificateViolated(format!(
                    "overshoot {max_overshoot_levels} levels exceeds the slot width {}",
                    dp.d
                )));
            }
            Ok(DyadicGapReport {
                n,
                coarse_levels: dp.d,
                gap,
                max_overshoot_levels,
            })
        })
        .collect()
}

/// Worst-case expectations of the field stopped at each dyadic coarsening of
/// the first exit from `exit_set`.
pub fn dyadic_stopped_expectations(
    tree: &ScenarioTree,
    xi: &Payoff,
    exit_set: &IntervalUnion,
    ns: &[u32],
) -> Result<Vec<f64>> {
    let fields = backward_induct(tree, xi)?;
    ns.iter()
        .map(|&n| {
            let dp = absorbing_dp(tree, &fields, exit_set, n)?;
            Ok(dp.run(LeafMode::Value).0)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{expect, StateSpace};
    use crate::volatility::{GCoefficients, VolatilityGrid};
    use approx::assert_abs_diff_eq;

    fn paths_tree(sigmas: &[f64], n: usize) -> ScenarioTree {
        let lo = sigmas[0] * sigmas[0];
        let hi = sigmas[sigmas.len() - 1] * sigmas[sigmas.len() - 1];
        let c = GCoefficients::new(lo, hi).unwrap();
        let g = VolatilityGrid::new(c, sigmas.to_vec()).unwrap();
        ScenarioTree::build_with(c, g, n, 1.0, StateSpace::Paths, 500_000).unwrap()
    }

    #[test]
    fn immediate_exit_when_every_move_leaves_the_set() {
        // sqrt(dt) = 0.5, so the first move has size 0.4 or 0.5 — both
        // outside [-0.35, 0.35].
        let t = paths_tree(&[0.8, 1.0], 4);
        let rule = StoppingRule::exit_time(&t, &IntervalUnion::interval(-0.35, 0.35).unwrap());
        let times = rule.path_times(&t).unwrap();
        assert!(times.iter().all(|&s| s == 1));
    }

    #[test]
    fn exit_times_are_adapted_and_reconstructible() {
        let t = paths_tree(&[0.8, 1.0], 4);
        let rule = StoppingRule::exit_time(&t, &IntervalUnion::interval(-1.0, 1.0).unwrap());
        let times = rule.path_times(&t).unwrap();
        assert!(times.iter().any(|&s| s < 4));
        assert!(is_star_stopping(&t, &times).unwrap());
        let rebuilt = from_path_times(&t, &times).unwrap();
        assert_eq!(rebuilt.path_times(&t).unwrap(), times);

        let mut broken = times;
        // A path cannot stop at level 1 unless its level-1 sibling group does.
        let target = (0..broken.len()).find(|&i| broken[i] > 2).unwrap();
        broken[target] = 1;
        assert!(!is_star_stopping(&t, &broken).unwrap());
    }

    #[test]
    fn min_takes_the_earlier_rule() {
        let t = paths_tree(&[0.8, 1.0], 4);
        let exit = StoppingRule::exit_time(&t, &IntervalUnion::interval(-1.0, 1.0).unwrap());
        let capped = exit.min(&StoppingRule::at_level(&t, 2).unwrap()).unwrap();
        let raw = exit.path_times(&t).unwrap();
        let cut = capped.path_times(&t).unwrap();
        for (a, b) in raw.iter().zip(&cut) {
            assert_eq!(*b, (*a).min(2));
        }
    }

    #[test]
    fn dyadic_levels_round_up() {
        // 20 steps, 4 dyadic slots of 5 levels each: level 6 rounds to 10,
        // i.e. time 0.3 rounds to 0.5 on a unit horizon.
        assert_eq!(dyadic_level(20, 6, 2).unwrap(), 10);
        // 8 steps, 8 slots: an immediate stop rounds to level 1, time 0.125.
        assert_eq!(dyadic_level(8, 0, 3).unwrap(), 1);
        assert_eq!(dyadic_level(8, 3, 3).unwrap(), 3);
        assert_eq!(dyadic_level(8, 8, 1).unwrap(), 8);
        assert!(matches!(
            dyadic_level(10, 3, 2),
            Err(Error::LatticeIncompatible(_))
        ));
    }

    #[test]
    fn dyadic_rule_rounds_every_path() {
        let t = paths_tree(&[0.8, 1.0], 4);
        let exit = StoppingRule::exit_time(&t, &IntervalUnion::interval(-1.0, 1.0).unwrap());
        let raw = exit.path_times(&t).unwrap();
        for n in [1u32, 2] {
            let coarse = dyadic(&t, &exit, n).unwrap();
            let rounded = coarse.path_times(&t).unwrap();
            for (s, r) in raw.iter().zip(&rounded) {
                assert_eq!(*r, dyadic_level(4, *s, n).unwrap());
                assert!(*r >= *s && *r - *s <= 4 >> n);
            }
        }
    }

    #[test]
    fn optional_stopping_is_exact() {
        let t = paths_tree(&[0.8, 1.0], 4);
        let exit = StoppingRule::exit_time(&t, &IntervalUnion::interval(-1.0, 1.0).unwrap());
        let sigma = exit.min(&StoppingRule::at_level(&t, 2).unwrap()).unwrap();
        let check =
            optional_stopping_check(&t, &Payoff::Call { strike: 0.0 }, &sigma, &exit).unwrap();
        assert!(check.max_gap <= 1e-12, "max gap {}", check.max_gap);
        assert!(check.stop_gap <= check.max_gap);
        assert_eq!(check.per_level.len(), 5);
    }

    #[test]
    fn rule_ordering_is_enforced() {
        let t = paths_tree(&[0.8, 1.0], 4);
        let early = StoppingRule::at_level(&t, 1).unwrap();
        let late = StoppingRule::at_level(&t, 3).unwrap();
        assert!(matches!(
            optional_stopping_check(&t, &Payoff::Abs, &late, &early),
            Err(Error::RuleOrdering(_))
        ));
    }

    #[test]
    fn degenerate_band_is_rejected() {
        let c = GCoefficients::new(0.0, 1.0).unwrap();
        let g = VolatilityGrid::new(c, vec![0.0, 1.0]).unwrap();
        let t = ScenarioTree::build_with(c, g, 3, 1.0, StateSpace::Paths, 10_000).unwrap();
        let rule = StoppingRule::at_level(&t, 1).unwrap();
        assert!(matches!(
            optional_stopping_check(&t, &Payoff::Abs, &rule, &rule),
            Err(Error::DegenerateVolatility)
        ));
    }

    #[test]
    fn quadratic_variation_fields_respect_band_bounds() {
        let t = paths_tree(&[0.5, 1.0], 4);
        let qv = quadratic_variation(&t).unwrap();
        for (k, field) in qv.iter().enumerate() {
            let t_k = k as f64 * t.dt();
            for v in 0..field.len() {
                assert!(field.get(v) >= 0.25 * t_k - 1e-15);
                assert!(field.get(v) <= 1.0 * t_k + 1e-15);
            }
        }
    }

    #[test]
    fn absorbing_dp_matches_path_enumeration() {
        let t = paths_tree(&[0.8, 1.0], 4);
        let set = IntervalUnion::interval(-1.0, 1.0).unwrap();
        let xi = Payoff::Call { strike: 0.0 };
        let m_fields = backward_induct(&t, &xi).unwrap();
        let exit = StoppingRule::exit_time(&t, &set);
        let at_exit = stopped_field(&t, &m_fields, &exit).unwrap();

        let reports = dyadic_stop_gaps(&t, &xi, &set, &[1, 2]).unwrap();
        let values = dyadic_stopped_expectations(&t, &xi, &set, &[1, 2]).unwrap();
        for (report, value) in reports.iter().zip(&values) {
            let coarse = dyadic(&t, &exit, report.n).unwrap();
            let at_coarse = stopped_field(&t, &m_fields, &coarse).unwrap();
            let oracle_gap = expect(&t, &at_coarse.abs_diff(&at_exit)).unwrap();
            let oracle_value = expect(&t, &at_coarse).unwrap();
            assert_abs_diff_eq!(report.gap, oracle_gap, epsilon = 1e-12);
            assert_abs_diff_eq!(*value, oracle_value, epsilon = 1e-12);
            assert!(report.max_overshoot_levels <= report.coarse_levels);
        }
    }

    #[test]
    fn absorbing_dp_agrees_across_state_spaces() {
        let c = GCoefficients::new(0.64, 1.0).unwrap();
        let g = VolatilityGrid::new(c, vec![0.8, 1.0]).unwrap();
        let paths = ScenarioTree::build_with(c, g.clone(), 4, 1.0, StateSpace::Paths, 10_000)
            .unwrap();
        let pos = ScenarioTree::build_with(c, g, 4, 1.0, StateSpace::Position, 10_000).unwrap();
        let set = IntervalUnion::interval(-1.0, 1.0).unwrap();
        let xi = Payoff::Call { strike: 0.0 };
        let a = dyadic_stop_gaps(&paths, &xi, &set, &[1, 2]).unwrap();
        let b = dyadic_stop_gaps(&pos, &xi, &set, &[1, 2]).unwrap();
        for (ra, rb) in a.iter().zip(&b) {
            assert_abs_diff_eq!(ra.gap, rb.gap, epsilon = 1e-12);
            assert_eq!(ra.max_overshoot_levels, rb.max_overshoot_levels);
        }
    }

    #[test]
    fn exact_dyadic_gap_vanishes_on_the_finest_lattice() {
        let t = paths_tree(&[0.8, 1.0], 4);
        let set = IntervalUnion::interval(-1.0, 1.0).unwrap();
        let reports = dyadic_stop_gaps(&t, &Payoff::Abs, &set, &[2]).unwrap();
        // 2^2 slots on 4 steps: every level is dyadic, so the coarsening is
        // the identity away from level 0 and the gap is exactly zero.
        assert_eq!(reports[0].coarse_levels, 1);
        assert_eq!(reports[0].gap, 0.0);
    }
}
