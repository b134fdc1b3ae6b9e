//! The payoff vocabulary shared by the tree and PDE engines.
//!
//! Payoffs form a closed enumeration rather than an expression language:
//! terminal-position families, quadratic-variation families, cylinder payoffs
//! over at most three time points, algebraic combinators, and an opaque
//! path-functional escape hatch for values that only exist path by path
//! (stopped martingales, level fields). Every variant evaluates against a
//! [`PathState`], which carries whichever path summaries the caller has.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::interval::IntervalUnion;

/// Which scalar observable an envelope payoff reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coord {
    /// Terminal position of the path.
    Position,
    /// Terminal accumulated quadratic variation.
    QuadVar,
}

/// The cylinder functions admitted on tuples of sampled positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CylinderFn {
    /// `x_i`.
    Coordinate(usize),
    /// Product of all coordinates.
    Product,
    /// `x_base * (x_upper - x_base)`.
    ScaledIncrement { base: usize, upper: usize },
    /// `(x_upper - x_base)^2`.
    SquaredIncrement { base: usize, upper: usize },
}

impl CylinderFn {
    fn max_index(&self) -> usize {
        match *self {
            CylinderFn::Coordinate(i) => i,
            CylinderFn::Product => 0,
            CylinderFn::ScaledIncrement { base, upper }
            | CylinderFn::SquaredIncrement { base, upper } => base.max(upper),
        }
    }

    pub fn eval(&self, coords: &[f64]) -> f64 {
        match *self {
            CylinderFn::Coordinate(i) => coords[i],
            CylinderFn::Product => coords.iter().product(),
            CylinderFn::ScaledIncrement { base, upper } => {
                coords[base] * (coords[upper] - coords[base])
            }
            CylinderFn::SquaredIncrement { base, upper } => {
                let d = coords[upper] - coords[base];
                d * d
            }
        }
    }
}

/// An opaque payoff evaluated on the whole sampled path.
///
/// Used where a value is genuinely path-dependent: stopped fields, products
/// with level fields, ad-hoc test functionals. Carry a label so diagnostics
/// stay readable.
#[derive(Clone)]
pub struct PathPayoff {
    label: String,
    f: Arc<dyn Fn(&PathState<'_>) -> Result<f64> + Send + Sync>,
}

impl PathPayoff {
    pub fn new(
        label: impl Into<String>,
        f: impl Fn(&PathState<'_>) -> Result<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            f: Arc::new(f),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl fmt::Debug for PathPayoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PathPayoff({})", self.label)
    }
}

/// Evaluation state handed to [`Payoff::eval`]: a terminal path summary.
///
/// Engines fill in what they know. A position-only PDE state carries just
/// `terminal_position`; a non-recombined tree path carries everything,
/// including the per-level node indices needed by field-reading payoffs.
#[derive(Debug, Clone, Copy, Default)]
pub struct PathState<'a> {
    pub terminal_position: Option<f64>,
    pub terminal_qv: Option<f64>,
    /// Lattice spacing of the sampled path, when path arrays are present.
    pub dt: Option<f64>,
    /// Positions at levels `0..=n`.
    pub positions: Option<&'a [f64]>,
    /// Accumulated quadratic variation at levels `0..=n`.
    pub qvs: Option<&'a [f64]>,
    /// Node index at each level of the originating tree.
    pub nodes: Option<&'a [u32]>,
}

impl<'a> PathState<'a> {
    /// State carrying only a terminal position (PDE engine).
    pub fn position(x: f64) -> Self {
        Self {
            terminal_position: Some(x),
            ..Self::default()
        }
    }

    /// State carrying terminal position and quadratic variation.
    pub fn terminal(x: f64, qv: f64) -> Self {
        Self {
            terminal_position: Some(x),
            terminal_qv: Some(qv),
            ..Self::default()
        }
    }

    /// Full path state on a time lattice of spacing `dt`.
    pub fn path(dt: f64, positions: &'a [f64], qvs: &'a [f64], nodes: &'a [u32]) -> Self {
        Self {
            terminal_position: positions.last().copied(),
            terminal_qv: qvs.last().copied(),
            dt: Some(dt),
            positions: Some(positions),
            qvs: Some(qvs),
            nodes: Some(nodes),
        }
    }

    fn position_at(&self, t: f64) -> Result<f64> {
        let (dt, xs) = match (self.dt, self.positions) {
            (Some(dt), Some(xs)) => (dt, xs),
            _ => return Err(Error::MissingStateComponent("sampled path positions")),
        };
        let level = (t / dt).round();
        if (t - level * dt).abs() > 1e-9 * dt.max(1.0) {
            return Err(Error::OffLattice(t));
        }
        let idx = level as usize;
        if idx >= xs.len() {
            return Err(Error::OffLattice(t));
        }
        Ok(xs[idx])
    }
}

/// A payoff on terminal path summaries.
#[derive(Debug, Clone)]
pub enum Payoff {
    Constant(f64),
    /// `(x - strike)+`.
    Call { strike: f64 },
    /// `(strike - x)+`.
    Put { strike: f64 },
    /// `x^2`.
    Square,
    /// `min(x^2, cap)`; Lipschitz with constant `2 sqrt(cap)`.
    SquareClamped { cap: f64 },
    Identity,
    Abs,
    /// Indicator of `x >= threshold`.
    DigitalGe { threshold: f64 },
    /// Terminal quadratic variation itself.
    QvIdentity,
    /// Indicator of the open band `lo < qv < hi`.
    QvBand { lo: f64, hi: f64 },
    /// `(1 - sharpness * dist(v, set))+`, a Lipschitz cap on the closed-set
    /// indicator: decreases to the indicator as `sharpness` grows.
    EnvelopeClosed {
        set: IntervalUnion,
        sharpness: f64,
        coord: Coord,
    },
    /// `min(1, sharpness * dist(v, complement))`, a Lipschitz floor under the
    /// open-set indicator: increases to the indicator as `sharpness` grows.
    EnvelopeOpen {
        set: IntervalUnion,
        sharpness: f64,
        coord: Coord,
    },
    /// `func` applied to positions sampled at the given times.
    Cylinder { times: Vec<f64>, func: CylinderFn },
    /// `scale * inner + offset`.
    Scaled {
        inner: Box<Payoff>,
        scale: f64,
        offset: f64,
    },
    Sum(Box<Payoff>, Box<Payoff>),
    Min(Box<Payoff>, Box<Payoff>),
    Max(Box<Payoff>, Box<Payoff>),
    PathFn(PathPayoff),
}

/// Largest number of time points a cylinder payoff may sample.
pub const MAX_CYLINDER_POINTS: usize = 3;

impl Payoff {
    /// Validated cylinder payoff over at most [`MAX_CYLINDER_POINTS`] times.
    pub fn cylinder(times: Vec<f64>, func: CylinderFn) -> Result<Self> {
        if times.is_empty() || times.len() > MAX_CYLINDER_POINTS {
            return Err(Error::CylinderTooLong {
                max: MAX_CYLINDER_POINTS,
                got: times.len(),
            });
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) || times[0] < 0.0 {
            return Err(Error::InvalidPayoff(
                "cylinder times must be nonnegative and strictly increasing".into(),
            ));
        }
        if func.max_index() >= times.len() {
            return Err(Error::InvalidPayoff(
                "cylinder function indexes a missing coordinate".into(),
            ));
        }
        Ok(Payoff::Cylinder { times, func })
    }

    /// Validated envelope above the indicator of a closed set.
    pub fn envelope_closed(set: IntervalUnion, sharpness: f64, coord: Coord) -> Result<Self> {
        if !(sharpness > 0.0) || !sharpness.is_finite() {
            return Err(Error::InvalidPayoff("sharpness must be positive".into()));
        }
        Ok(Payoff::EnvelopeClosed {
            set,
            sharpness,
            coord,
        })
    }

    /// Validated envelope below the indicator of an open set.
    pub fn envelope_open(set: IntervalUnion, sharpness: f64, coord: Coord) -> Result<Self> {
        if !(sharpness > 0.0) || !sharpness.is_finite() {
            return Err(Error::InvalidPayoff("sharpness must be positive".into()));
        }
        Ok(Payoff::EnvelopeOpen {
            set,
            sharpness,
            coord,
        })
    }

    pub fn negated(&self) -> Payoff {
        Payoff::Scaled {
            inner: Box::new(self.clone()),
            scale: -1.0,
            offset: 0.0,
        }
    }

    /// Positive part `max(self, 0)`.
    pub fn positive_part(&self) -> Payoff {
        Payoff::Max(Box::new(self.clone()), Box::new(Payoff::Constant(0.0)))
    }

    /// `|self - other|`.
    pub fn abs_diff(&self, other: &Payoff) -> Payoff {
        let diff = Payoff::Sum(Box::new(self.clone()), Box::new(other.negated()));
        Payoff::Max(Box::new(diff.negated()), Box::new(diff))
    }

    /// Evaluates the payoff on a terminal path summary.
    ///
    /// Total on states that carry the required components; otherwise fails
    /// with [`Error::MissingStateComponent`].
    pub fn eval(&self, s: &PathState<'_>) -> Result<f64> {
        let position = || {
            s.terminal_position
                .ok_or(Error::MissingStateComponent("terminal position"))
        };
        let qv = || {
            s.terminal_qv
                .ok_or(Error::MissingStateComponent("terminal quadratic variation"))
        };
        match self {
            Payoff::Constant(c) => Ok(*c),
            Payoff::Call { strike } => Ok((position()? - strike).max(0.0)),
            Payoff::Put { strike } => Ok((strike - position()?).max(0.0)),
            Payoff::Square => {
                let x = position()?;
                Ok(x * x)
            }
            Payoff::SquareClamped { cap } => {
                let x = position()?;
                Ok((x * x).min(*cap))
            }
            Payoff::Identity => position(),
            Payoff::Abs => Ok(position()?.abs()),
            Payoff::DigitalGe { threshold } => {
                Ok(if position()? >= *threshold { 1.0 } else { 0.0 })
            }
            Payoff::QvIdentity => qv(),
            Payoff::QvBand { lo, hi } => {
                let q = qv()?;
                Ok(if q > *lo && q < *hi { 1.0 } else { 0.0 })
            }
            Payoff::EnvelopeClosed {
                set,
                sharpness,
                coord,
            } => {
                let v = match coord {
                    Coord::Position => position()?,
                    Coord::QuadVar => qv()?,
                };
                Ok((1.0 - sharpness * set.distance(v)).max(0.0))
            }
            Payoff::EnvelopeOpen {
                set,
                sharpness,
                coord,
            } => {
                let v = match coord {
                    Coord::Position => position()?,
                    Coord::QuadVar => qv()?,
                };
                let d = set.distance_to_complement(v);
                Ok(if d.is_infinite() {
                    1.0
                } else {
                    (sharpness * d).min(1.0)
                })
            }
            Payoff::Cylinder { times, func } => {
                let mut coords = [0.0f64; MAX_CYLINDER_POINTS];
                for (slot, &t) in coords.iter_mut().zip(times.iter()) {
                    *slot = s.position_at(t)?;
                }
                Ok(func.eval(&coords[..times.len()]))
            }
            Payoff::Scaled {
                inner,
                scale,
                offset,
            } => Ok(scale * inner.eval(s)? + offset),
            Payoff::Sum(a, b) => Ok(a.eval(s)? + b.eval(s)?),
            Payoff::Min(a, b) => Ok(a.eval(s)?.min(b.eval(s)?)),
            Payoff::Max(a, b) => Ok(a.eval(s)?.max(b.eval(s)?)),
            Payoff::PathFn(p) => (p.f)(s),
        }
    }

    /// True when evaluation only reads the terminal position.
    pub fn position_only(&self) -> bool {
        match self {
            Payoff::Constant(_)
            | Payoff::Call { .. }
            | Payoff::Put { .. }
            | Payoff::Square
            | Payoff::SquareClamped { .. }
            | Payoff::Identity
            | Payoff::Abs
            | Payoff::DigitalGe { .. } => true,
            Payoff::EnvelopeClosed { coord, .. } | Payoff::EnvelopeOpen { coord, .. } => {
                *coord == Coord::Position
            }
            Payoff::QvIdentity | Payoff::QvBand { .. } => false,
            Payoff::Cylinder { .. } | Payoff::PathFn(_) => false,
            Payoff::Scaled { inner, .. } => inner.position_only(),
            Payoff::Sum(a, b) | Payoff::Min(a, b) | Payoff::Max(a, b) => {
                a.position_only() && b.position_only()
            }
        }
    }

    /// True when evaluation needs nothing beyond terminal position and
    /// terminal quadratic variation.
    pub fn terminal_only(&self) -> bool {
        match self {
            Payoff::Cylinder { .. } | Payoff::PathFn(_) => false,
            Payoff::Scaled { inner, .. } => inner.terminal_only(),
            Payoff::Sum(a, b) | Payoff::Min(a, b) | Payoff::Max(a, b) => {
                a.terminal_only() && b.terminal_only()
            }
            _ => true,
        }
    }

    /// A Lipschitz constant valid on all of the payoff's domain, or `None`
    /// when the payoff is unbounded-slope or discontinuous (squares,
    /// digitals, band indicators, opaque path functionals).
    pub fn lipschitz_bound(&self) -> Option<f64> {
        match self {
            Payoff::Constant(_) => Some(0.0),
            Payoff::Call { .. } | Payoff::Put { .. } | Payoff::Identity | Payoff::Abs => Some(1.0),
            Payoff::Square => None,
            Payoff::SquareClamped { cap } => Some(2.0 * cap.sqrt()),
            Payoff::DigitalGe { .. } | Payoff::QvBand { .. } => None,
            Payoff::QvIdentity => Some(1.0),
            Payoff::EnvelopeClosed { sharpness, .. } | Payoff::EnvelopeOpen { sharpness, .. } => {
                Some(*sharpness)
            }
            Payoff::Cylinder { func, .. } => match func {
                CylinderFn::Coordinate(_) => Some(1.0),
                _ => None,
            },
            Payoff::Scaled { inner, scale, .. } => {
                inner.lipschitz_bound().map(|b| b * scale.abs())
            }
            Payoff::Sum(a, b) => Some(a.lipschitz_bound()? + b.lipschitz_bound()?),
            Payoff::Min(a, b) | Payoff::Max(a, b) => {
                Some(a.lipschitz_bound()?.max(b.lipschitz_bound()?))
            }
            Payoff::PathFn(_) => None,
        }
    }
}
