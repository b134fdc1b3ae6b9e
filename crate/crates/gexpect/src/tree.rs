//! Adversarial-volatility scenario trees and worst-case backward induction.
//!
//! A tree discretizes the canonical process on a uniform time lattice: at each
//! node the adversary picks a volatility from the grid, after which the
//! position moves `± sigma * sqrt(dt)` with weight 1/2 each and the quadratic
//! variation account grows by `sigma^2 * dt`. The worst-case one-step
//! expectation is therefore a maximum over grid volatilities of symmetric
//! two-point averages, and backward induction of that kernel produces the
//! conditional sublinear expectation at every node.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::field::AdaptedField;
use crate::payoff::{PathState, Payoff};
use crate::volatility::{GCoefficients, VolatilityGrid};

/// Default bound on the total number of nodes a build may materialize.
pub const DEFAULT_NODE_CAP: usize = 2_000_000;

/// Which state the tree recombines on.
///
/// Recombination coalesces nodes of a level whose tracked state agrees up to
/// the quantization tolerance; values obtained by backward induction only
/// depend on the tracked state, so coalescing is exact for payoffs that read
/// nothing else.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateSpace {
    /// No recombination; one node per path. Required by payoffs that read
    /// intermediate positions (cylinders, path functionals) and by the
    /// measure-enumeration and stopping-rule machinery.
    Paths,
    /// Recombine on position alone. Valid only for terminal-position payoffs.
    Position,
    /// Recombine on the (position, quadratic variation) pair.
    PositionQv,
}

impl StateSpace {
    /// The cheapest state space able to evaluate `p`.
    pub fn minimal_for(p: &Payoff) -> StateSpace {
        if p.position_only() {
            StateSpace::Position
        } else if p.terminal_only() {
            StateSpace::PositionQv
        } else {
            StateSpace::Paths
        }
    }
}

struct Level {
    x: Vec<f64>,
    /// Accumulated quadratic variation; empty when the state space is
    /// `Position` (the value is not a function of position alone).
    q: Vec<f64>,
    /// Child node indices, `2 * grid.len()` per node in slot order
    /// `(vol 0, +), (vol 0, -), (vol 1, +), ...`; empty for `Paths`, where
    /// children are implicit: node `j` owns slots `j*2m ..= j*2m + 2m-1`.
    children: Vec<u32>,
    /// Quantized-state index of the level, kept for state lookup.
    index: HashMap<(i64, i64), u32>,
}

/// A built scenario tree.
pub struct ScenarioTree {
    coef: GCoefficients,
    grid: VolatilityGrid,
    n_steps: usize,
    horizon: f64,
    dt: f64,
    sqrt_dt: f64,
    space: StateSpace,
    levels: Vec<Level>,
    unit_x: f64,
    unit_q: f64,
}

impl ScenarioTree {
    /// Builds a `(position, quadratic variation)`-recombined tree with the
    /// default node cap.
    pub fn build(
        coef: GCoefficients,
        grid: VolatilityGrid,
        n_steps: usize,
        horizon: f64,
    ) -> Result<Self> {
        Self::build_with(coef, grid, n_steps, horizon, StateSpace::PositionQv, DEFAULT_NODE_CAP)
    }

    /// Builds a tree with an explicit state space and node cap.
    pub fn build_with(
        coef: GCoefficients,
        grid: VolatilityGrid,
        n_steps: usize,
        horizon: f64,
        space: StateSpace,
        node_cap: usize,
    ) -> Result<Self> {
        if n_steps == 0 || !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidParameter(
                "need n_steps >= 1 and a positive finite horizon".into(),
            ));
        }
        // Cross-validate the grid against the band.
        VolatilityGrid::new(coef, grid.sigmas().to_vec())?;
        let node_cap = node_cap.min(u32::MAX as usize);
        let m = grid.len();
        let dt = horizon / n_steps as f64;
        let sqrt_dt = dt.sqrt();
        let scale_x = (coef.sigma_high() * sqrt_dt).max(f64::MIN_POSITIVE);
        let scale_q = (coef.sigma_high_sq() * dt).max(f64::MIN_POSITIVE);
        let unit_x = scale_x * 1e-8;
        let unit_q = scale_q * 1e-8;

        if space == StateSpace::Paths {
            let mut projected: u128 = 0;
            let mut size: u128 = 1;
            for _ in 0..=n_steps {
                projected += size;
                size *= (2 * m) as u128;
                if projected > node_cap as u128 {
                    return Err(Error::NodeCapExceeded {
                        projected: usize::MAX,
                        cap: node_cap,
                    });
                }
            }
        }

        let deltas: Vec<f64> = (0..2 * m)
            .map(|s| {
                let sigma = grid.sigma(s / 2);
                if s % 2 == 0 {
                    sigma * sqrt_dt
                } else {
                    -sigma * sqrt_dt
                }
            })
            .collect();
        let q_incs: Vec<f64> = (0..m).map(|i| grid.sigma(i) * grid.sigma(i) * dt).collect();

        let mut levels = Vec::with_capacity(n_steps + 1);
        levels.push(Level {
            x: vec![0.0],
            q: if space == StateSpace::Position {
                Vec::new()
            } else {
                vec![0.0]
            },
            children: Vec::new(),
            index: HashMap::new(),
        });
        let mut total: usize = 1;

        for _ in 0..n_steps {
            let parent_len = levels.last().unwrap().x.len();
            let mut next = Level {
                x: Vec::new(),
                q: Vec::new(),
                children: Vec::new(),
                index: HashMap::new(),
            };
            match space {
                StateSpace::Paths => {
                    next.x.reserve(parent_len * 2 * m);
                    next.q.reserve(parent_len * 2 * m);
                    let parents = levels.last().unwrap();
                    for j in 0..parent_len {
                        for s in 0..2 * m {
                            next.x.push(parents.x[j] + deltas[s]);
                            next.q.push(parents.q[j] + q_incs[s / 2]);
                        }
                    }
                }
                StateSpace::Position | StateSpace::PositionQv => {
                    let parents = levels.last().unwrap();
                    let mut children = vec![0u32; parent_len * 2 * m];
                    for j in 0..parent_len {
                        for s in 0..2 * m {
                            let cx = parents.x[j] + deltas[s];
                            let key_x = quantize(cx, unit_x);
                            let (cq, key_q) = if space == StateSpace::PositionQv {
                                let cq = parents.q[j] + q_incs[s / 2];
                                (cq, quantize(cq, unit_q))
                            } else {
                                (0.0, 0)
                            };
                            let next_len = next.x.len();
                            let idx = *next.index.entry((key_x, key_q)).or_insert_with(|| {
                                next.x.push(cx);
                                if space == StateSpace::PositionQv {
                                    next.q.push(cq);
                                }
                                next_len as u32
                            });
                            children[j * 2 * m + s] = idx;
                        }
                    }
                    levels.last_mut().unwrap().children = children;
                }
            }
            total = total
                .checked_add(next.x.len())
                .ok_or(Error::NodeCapExceeded {
                    projected: usize::MAX,
                    cap: node_cap,
                })?;
            if total > node_cap {
                return Err(Error::NodeCapExceeded {
                    projected: total,
                    cap: node_cap,
                });
            }
            levels.push(next);
        }

        Ok(Self {
            coef,
            grid,
            n_steps,
            horizon,
            dt,
            sqrt_dt,
            space,
            levels,
            unit_x,
            unit_q,
        })
    }

    pub fn coef(&self) -> GCoefficients {
        self.coef
    }

    pub fn grid(&self) -> &VolatilityGrid {
        &self.grid
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn sqrt_dt(&self) -> f64 {
        self.sqrt_dt
    }

    pub fn state_space(&self) -> StateSpace {
        self.space
    }

    pub fn is_paths(&self) -> bool {
        self.space == StateSpace::Paths
    }

    pub fn level_len(&self, level: usize) -> usize {
        self.levels[level].x.len()
    }

    pub fn node_count(&self) -> usize {
        self.levels.iter().map(|l| l.x.len()).sum()
    }

    pub fn position(&self, level: usize, node: usize) -> f64 {
        self.levels[level].x[node]
    }

    /// Quadratic variation at a node; an error on position-only trees, where
    /// the account is not a function of the tracked state.
    pub fn qv(&self, level: usize, node: usize) -> Result<f64> {
        if self.space == StateSpace::Position {
            return Err(Error::PayoffTreeIncompatible(
                "position-only trees do not track quadratic variation".into(),
            ));
        }
        Ok(self.levels[level].q[node])
    }

    /// Child node index for a `(volatility, sign)` slot.
    pub fn child(&self, level: usize, node: usize, vol: usize, down: bool) -> u32 {
        let slot = 2 * vol + usize::from(down);
        match self.space {
            StateSpace::Paths => (node * 2 * self.grid.len() + slot) as u32,
            _ => self.levels[level].children[node * 2 * self.grid.len() + slot],
        }
    }

    /// Parent of a path-tree node.
    pub fn parent(&self, node: usize) -> usize {
        debug_assert!(self.is_paths());
        node / (2 * self.grid.len())
    }

    /// Terminal descendants of a path-tree node form a contiguous id range.
    pub fn descendant_range(&self, level: usize, node: usize, at_level: usize) -> (usize, usize) {
        debug_assert!(self.is_paths() && at_level >= level);
        let span = (2 * self.grid.len()).pow((at_level - level) as u32);
        (node * span, (node + 1) * span)
    }

    /// Node index at `level` on the path to a deeper path-tree node.
    pub fn ancestor(&self, node: usize, node_level: usize, level: usize) -> usize {
        debug_assert!(self.is_paths() && level <= node_level);
        node / (2 * self.grid.len()).pow((node_level - level) as u32)
    }

    /// Looks a state up in a level by quantized key, tolerating one-unit
    /// rounding drift on either side.
    pub fn find_node(&self, level: usize, x: f64, q: Option<f64>) -> Option<u32> {
        let lvl = &self.levels[level];
        if lvl.index.is_empty() {
            if level == 0 {
                return Some(0);
            }
            return None;
        }
        let kx = quantize(x, self.unit_x);
        let kq = match (self.space, q) {
            (StateSpace::PositionQv, Some(q)) => quantize(q, self.unit_q),
            (StateSpace::PositionQv, None) => return None,
            _ => 0,
        };
        let mut best: Option<(f64, u32)> = None;
        for dx in -1i64..=1 {
            for dq in -1i64..=1 {
                if self.space != StateSpace::PositionQv && dq != 0 {
                    continue;
                }
                if let Some(&idx) = lvl.index.get(&(kx + dx, kq + dq)) {
                    let err = (lvl.x[idx as usize] - x).abs();
                    if best.map_or(true, |(e, _)| err < e) {
                        best = Some((err, idx));
                    }
                }
            }
        }
        best.and_then(|(err, idx)| (err <= 2.0 * self.unit_x).then_some(idx))
    }

    /// Maps a time to its lattice level.
    pub fn level_of_time(&self, t: f64) -> Result<usize> {
        let level = (t / self.dt).round();
        if (t - level * self.dt).abs() > 1e-9 * self.dt.max(1.0) || level < 0.0 {
            return Err(Error::OffLattice(t));
        }
        let level = level as usize;
        if level > self.n_steps {
            return Err(Error::OffLattice(t));
        }
        Ok(level)
    }

    /// Reconstructs the path to a terminal node of a path tree into the
    /// caller's buffers (`positions`/`qvs`/`nodes` get levels `0..=n_steps`).
    pub fn fill_path(
        &self,
        terminal: usize,
        positions: &mut Vec<f64>,
        qvs: &mut Vec<f64>,
        nodes: &mut Vec<u32>,
    ) {
        debug_assert!(self.is_paths());
        let n = self.n_steps;
        positions.clear();
        qvs.clear();
        nodes.clear();
        positions.resize(n + 1, 0.0);
        qvs.resize(n + 1, 0.0);
        nodes.resize(n + 1, 0);
        let mut id = terminal;
        for level in (0..=n).rev() {
            positions[level] = self.levels[level].x[id];
            qvs[level] = self.levels[level].q[id];
            nodes[level] = id as u32;
            id /= 2 * self.grid.len();
        }
    }

    /// Checks that a payoff can be evaluated on this tree's terminal states.
    pub fn check_payoff(&self, p: &Payoff) -> Result<()> {
        let ok = match self.space {
            StateSpace::Paths => true,
            StateSpace::Position => p.position_only(),
            StateSpace::PositionQv => p.terminal_only(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::PayoffTreeIncompatible(format!(
                "payoff {:?} cannot be evaluated on a {:?} tree",
                p, self.space
            )))
        }
    }

    fn terminal_values(&self, p: &Payoff) -> Result<Vec<f64>> {
        self.check_payoff(p)?;
        let n = self.n_steps;
        let last = &self.levels[n];
        let len = last.x.len();
        let mut out = Vec::with_capacity(len);
        match self.space {
            StateSpace::Position => {
                for j in 0..len {
                    out.push(p.eval(&PathState::position(last.x[j]))?);
                }
            }
            StateSpace::PositionQv => {
                for j in 0..len {
                    out.push(p.eval(&PathState::terminal(last.x[j], last.q[j]))?);
                }
            }
            StateSpace::Paths => {
                if p.terminal_only() {
                    for j in 0..len {
                        out.push(p.eval(&PathState::terminal(last.x[j], last.q[j]))?);
                    }
                } else {
                    let mut positions = Vec::new();
                    let mut qvs = Vec::new();
                    let mut nodes = Vec::new();
                    for j in 0..len {
                        self.fill_path(j, &mut positions, &mut qvs, &mut nodes);
                        out.push(p.eval(&PathState::path(self.dt, &positions, &qvs, &nodes))?);
                    }
                }
            }
        }
        Ok(out)
    }

    /// One backward sweep of the worst-case kernel from level `level + 1`
    /// values to level `level` values.
    fn step_down(&self, level: usize, next: &[f64]) -> Vec<f64> {
        let m = self.grid.len();
        let len = self.level_len(level);
        debug_assert_eq!(next.len(), self.level_len(level + 1));
        let mut out = Vec::with_capacity(len);
        match self.space {
            StateSpace::Paths => {
                for j in 0..len {
                    let base = j * 2 * m;
                    let mut best = f64::NEG_INFINITY;
                    for i in 0..m {
                        let v = 0.5 * (next[base + 2 * i] + next[base + 2 * i + 1]);
                        if v > best {
                            best = v;
                        }
                    }
                    out.push(best);
                }
            }
            _ => {
                let children = &self.levels[level].children;
                for j in 0..len {
                    let base = j * 2 * m;
                    let mut best = f64::NEG_INFINITY;
                    for i in 0..m {
                        let a = next[children[base + 2 * i] as usize];
                        let b = next[children[base + 2 * i + 1] as usize];
                        let v = 0.5 * (a + b);
                        if v > best {
                            best = v;
                        }
                    }
                    out.push(best);
                }
            }
        }
        out
    }
}

fn quantize(v: f64, unit: f64) -> i64 {
    (v / unit).round() as i64
}

/// Worst-case one-step expectation over explicit `(up, down)` child values,
/// one pair per grid volatility: `max_i (up_i + down_i) / 2`.
///
/// Ties resolve to the lowest volatility index, and the scan order is fixed
/// ascending, so results are bit-reproducible.
pub fn one_step_expect(child_values: &[(f64, f64)]) -> f64 {
    assert!(
        !child_values.is_empty(),
        "one_step_expect needs at least one (up, down) pair"
    );
    let mut best = f64::NEG_INFINITY;
    for &(up, down) in child_values {
        let v = 0.5 * (up + down);
        if v > best {
            best = v;
        }
    }
    best
}

/// Conditional worst-case expectations of `p` at every level.
///
/// `fields[k]` is the level-`k` conditional value; `fields[n]` is the payoff
/// itself and `fields[0]` has the single root value, the unconditional
/// expectation.
pub fn backward_induct(tree: &ScenarioTree, p: &Payoff) -> Result<Vec<AdaptedField>> {
    let mut values = tree.terminal_values(p)?;
    let mut fields = Vec::with_capacity(tree.n_steps + 1);
    fields.push(AdaptedField::new(tree.n_steps, values.clone()));
    for level in (0..tree.n_steps).rev() {
        values = tree.step_down(level, &values);
        fields.push(AdaptedField::new(level, values.clone()));
    }
    fields.reverse();
    Ok(fields)
}

/// Root worst-case expectation of `p`; equivalent to
/// `backward_induct(tree, p)[0]` but keeps only two levels alive.
pub fn expect(tree: &ScenarioTree, p: &Payoff) -> Result<f64> {
    let mut values = tree.terminal_values(p)?;
    for level in (0..tree.n_steps).rev() {
        values = tree.step_down(level, &values);
    }
    Ok(values[0])
}

/// Backward induction started from an arbitrary level field instead of a
/// terminal payoff. Returns fields for levels `0..=field.level()`.
pub fn backward_induct_from(tree: &ScenarioTree, field: &AdaptedField) -> Result<Vec<AdaptedField>> {
    let start = field.level();
    if start > tree.n_steps || field.len() != tree.level_len(start) {
        return Err(Error::InvalidParameter(format!(
            "field shape ({}, {}) does not match the tree",
            start,
            field.len()
        )));
    }
    let mut values = field.values().to_vec();
    let mut fields = Vec::with_capacity(start + 1);
    fields.push(field.clone());
    for level in (0..start).rev() {
        values = tree.step_down(level, &values);
        fields.push(AdaptedField::new(level, values.clone()));
    }
    fields.reverse();
    Ok(fields)
}

/// Selects the conditional field at lattice time `t` out of an induction
/// result.
pub fn condition_at<'a>(
    tree: &ScenarioTree,
    fields: &'a [AdaptedField],
    t: f64,
) -> Result<&'a AdaptedField> {
    let level = tree.level_of_time(t)?;
    fields
        .iter()
        .find(|f| f.level() == level)
        .ok_or(Error::OffLattice(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn coef(lo: f64, hi: f64) -> GCoefficients {
        GCoefficients::new(lo, hi).unwrap()
    }

    fn grid(c: GCoefficients, sigmas: &[f64]) -> VolatilityGrid {
        VolatilityGrid::new(c, sigmas.to_vec()).unwrap()
    }

    #[test]
    fn level_sizes_and_recombination() {
        let c = coef(0.25, 1.0);
        let g = grid(c, &[0.5, 1.0]);
        let t = ScenarioTree::build(c, g.clone(), 1, 1.0).unwrap();
        assert_eq!(t.level_len(1), 4);

        let c1 = coef(1.0, 1.0);
        let g1 = grid(c1, &[1.0]);
        let t1 = ScenarioTree::build(c1, g1, 2, 1.0).unwrap();
        assert_eq!(t1.level_len(2), 3);

        let t2 = ScenarioTree::build(c, g, 2, 1.0).unwrap();
        let mut qs: Vec<f64> = (0..t2.level_len(2))
            .map(|j| t2.qv(2, j).unwrap())
            .collect();
        qs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        qs.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        assert_eq!(qs.len(), 3);
        assert_abs_diff_eq!(qs[0], 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(qs[1], 0.625, epsilon = 1e-12);
        assert_abs_diff_eq!(qs[2], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn paths_tree_shape() {
        let c = coef(0.25, 1.0);
        let g = grid(c, &[0.5, 1.0]);
        let t = ScenarioTree::build_with(c, g, 3, 1.0, StateSpace::Paths, 10_000).unwrap();
        assert_eq!(t.level_len(3), 64);
        assert_eq!(t.node_count(), 1 + 4 + 16 + 64);
        assert_eq!(t.descendant_range(1, 2, 3), (32, 48));
        assert_eq!(t.ancestor(37, 3, 1), 2);
    }

    #[test]
    fn node_cap_guards_path_explosion() {
        let c = coef(0.25, 1.0);
        let g = grid(c, &[0.5, 1.0]);
        let err = ScenarioTree::build_with(c, g, 12, 1.0, StateSpace::Paths, 100_000);
        assert!(matches!(err, Err(Error::NodeCapExceeded { .. })));
    }

    #[test]
    fn one_step_examples() {
        // Children of x = 0 under grid {0.5, 1}, dt = 1, payoff x^2.
        assert_abs_diff_eq!(one_step_expect(&[(0.25, 0.25), (1.0, 1.0)]), 1.0);
        // Odd payoff x.
        assert_abs_diff_eq!(one_step_expect(&[(0.5, -0.5), (1.0, -1.0)]), 0.0);
        // Payoff -x^2: the adversary prefers the low volatility.
        assert_abs_diff_eq!(one_step_expect(&[(-0.25, -0.25), (-1.0, -1.0)]), -0.25);
    }

    #[test]
    fn classical_reduction_square() {
        let c = coef(1.0, 1.0);
        let g = grid(c, &[1.0]);
        let t = ScenarioTree::build(c, g, 64, 1.0).unwrap();
        let v = expect(&t, &Payoff::Square).unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn square_expectation_uses_high_volatility() {
        let c = coef(0.25, 1.0);
        let g = grid(c, &[0.5, 1.0]);
        let t = ScenarioTree::build(c, g, 16, 1.0).unwrap();
        assert_abs_diff_eq!(expect(&t, &Payoff::Square).unwrap(), 1.0, epsilon = 1e-12);
        let neg_sq = Payoff::Square.negated();
        assert_abs_diff_eq!(expect(&t, &neg_sq).unwrap(), -0.25, epsilon = 1e-12);
    }

    #[test]
    fn qv_expectation_hits_band_edges() {
        let c = coef(0.25, 1.0);
        let g = grid(c, &[0.5, 1.0]);
        let t = ScenarioTree::build(c, g, 8, 1.0).unwrap();
        assert_abs_diff_eq!(expect(&t, &Payoff::QvIdentity).unwrap(), 1.0);
        let v = expect(&t, &Payoff::QvIdentity.negated()).unwrap();
        assert_abs_diff_eq!(-v, 0.25);
    }

    #[test]
    fn constants_are_preserved() {
        let c = coef(0.25, 1.0);
        let g = grid(c, &[0.5, 0.75, 1.0]);
        let t = ScenarioTree::build(c, g, 6, 2.0).unwrap();
        assert_abs_diff_eq!(expect(&t, &Payoff::Constant(3.5)).unwrap(), 3.5);
    }

    #[test]
    fn conditional_field_at_first_level() {
        let c = coef(0.25, 1.0);
        let g = grid(c, &[0.5, 1.0]);
        let t = ScenarioTree::build(c, g, 1, 1.0).unwrap();
        let fields = backward_induct(&t, &Payoff::Square).unwrap();
        let f1 = condition_at(&t, &fields, 1.0).unwrap();
        // Terminal level: the payoff itself; the sigma = 1 up-branch sits at x = 1.
        let up = (0..t.level_len(1))
            .find(|&j| (t.position(1, j) - 1.0).abs() < 1e-12)
            .unwrap();
        assert_abs_diff_eq!(f1.get(up), 1.0);
        assert!(condition_at(&t, &fields, 0.31).is_err());
    }

    #[test]
    fn tower_property_is_exact() {
        let c = coef(0.25, 1.0);
        let g = grid(c, &[0.5, 1.0]);
        let t = ScenarioTree::build(c, g, 2, 1.0).unwrap();
        let fields = backward_induct(&t, &Payoff::Abs).unwrap();
        let re = backward_induct_from(&t, &fields[1]).unwrap();
        assert_eq!(re[0].get(0), fields[0].get(0));
    }

    #[test]
    fn position_tree_rejects_qv_payoffs() {
        let c = coef(0.25, 1.0);
        let g = grid(c, &[0.5, 1.0]);
        let t =
            ScenarioTree::build_with(c, g, 4, 1.0, StateSpace::Position, DEFAULT_NODE_CAP).unwrap();
        assert!(matches!(
            expect(&t, &Payoff::QvIdentity),
            Err(Error::PayoffTreeIncompatible(_))
        ));
        assert!(expect(&t, &Payoff::Abs).is_ok());
    }

    #[test]
    fn position_tree_matches_full_tree_on_position_payoffs() {
        let c = coef(0.25, 1.0);
        let g = grid(c, &[0.5, 1.0]);
        let full = ScenarioTree::build(c, g.clone(), 6, 1.0).unwrap();
        let pos =
            ScenarioTree::build_with(c, g, 6, 1.0, StateSpace::Position, DEFAULT_NODE_CAP).unwrap();
        for p in [
            Payoff::Call { strike: 0.2 },
            Payoff::Put { strike: -0.1 },
            Payoff::Abs,
            Payoff::SquareClamped { cap: 0.5 },
        ] {
            let a = expect(&full, &p).unwrap();
            let b = expect(&pos, &p).unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        assert!(pos.node_count() < full.node_count());
    }

    #[test]
    fn paths_tree_matches_recombined() {
        let c = coef(0.25, 1.0);
        let g = grid(c, &[0.5, 1.0]);
        let paths =
            ScenarioTree::build_with(c, g.clone(), 6, 1.0, StateSpace::Paths, 10_000).unwrap();
        let full = ScenarioTree::build(c, g, 6, 1.0).unwrap();
        for p in [
            Payoff::Square,
            Payoff::QvIdentity,
            Payoff::Call { strike: 0.0 },
        ] {
            assert_abs_diff_eq!(
                expect(&paths, &p).unwrap(),
                expect(&full, &p).unwrap(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn find_node_roundtrip() {
        let c = coef(0.25, 1.0);
        let g = grid(c, &[0.5, 1.0]);
        let t = ScenarioTree::build_with(c, g, 8, 1.0, StateSpace::Position, DEFAULT_NODE_CAP)
            .unwrap();
        for j in 0..t.level_len(5) {
            let x = t.position(5, j);
            assert_eq!(t.find_node(5, x, None), Some(j as u32));
        }
        assert_eq!(t.find_node(5, 123.0, None), None);
    }

    #[test]
    fn qv_stays_within_band_bounds() {
        let c = coef(0.25, 1.0);
        let g = grid(c, &[0.5, 0.75, 1.0]);
        let t = ScenarioTree::build(c, g, 8, 1.0).unwrap();
        for level in 0..=8 {
            let t_k = level as f64 * t.dt();
            for j in 0..t.level_len(level) {
                let q = t.qv(level, j).unwrap();
                assert!(q >= 0.25 * t_k - 1e-15 && q <= 1.0 * t_k + 1e-15);
            }
        }
    }
}
