//! Seeded generators of random Lipschitz payoffs.
//!
//! Property checks over the expectation axioms and the representation of
//! conditional values want many structurally varied payoffs rather than a
//! handful of hand-picked ones. The samplers here draw from position-only
//! Lipschitz atoms (calls, puts, clamped squares, soft envelopes) combined
//! through scaling, sums, minima and maxima, so every draw is evaluable on
//! any state space and any engine. All randomness flows through a caller-
//! seeded ChaCha stream, making every draw reproducible from its seed.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::interval::IntervalUnion;
use crate::payoff::{Coord, Payoff};

/// A reproducible generator for the samplers in this module.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn atom(rng: &mut impl Rng) -> Payoff {
    match rng.gen_range(0..6u32) {
        0 => Payoff::Call {
            strike: rng.gen_range(-1.0..1.0),
        },
        1 => Payoff::Put {
            strike: rng.gen_range(-1.0..1.0),
        },
        2 => Payoff::Abs,
        3 => Payoff::Identity,
        4 => Payoff::SquareClamped {
            cap: rng.gen_range(0.5..4.0),
        },
        _ => {
            let lo = rng.gen_range(-1.0..0.5);
            let width = rng.gen_range(0.25..1.5);
            let sharpness = rng.gen_range(0.5..4.0);
            Payoff::envelope_closed(
                IntervalUnion::interval(lo, lo + width).unwrap(),
                sharpness,
                Coord::Position,
            )
            .unwrap()
        }
    }
}

fn sample_depth(rng: &mut impl Rng, depth: usize) -> Payoff {
    if depth == 0 || rng.gen_bool(0.35) {
        return atom(rng);
    }
    match rng.gen_range(0..4u32) {
        0 => Payoff::Scaled {
            inner: Box::new(sample_depth(rng, depth - 1)),
            scale: rng.gen_range(-2.0..2.0),
            offset: rng.gen_range(-1.0..1.0),
        },
        1 => Payoff::Sum(
            Box::new(sample_depth(rng, depth - 1)),
            Box::new(sample_depth(rng, depth - 1)),
        ),
        2 => Payoff::Min(
            Box::new(sample_depth(rng, depth - 1)),
            Box::new(sample_depth(rng, depth - 1)),
        ),
        _ => Payoff::Max(
            Box::new(sample_depth(rng, depth - 1)),
            Box::new(sample_depth(rng, depth - 1)),
        ),
    }
}

/// One random Lipschitz payoff of the terminal position.
pub fn sample_lipschitz_payoff(rng: &mut impl Rng) -> Payoff {
    sample_depth(rng, 2)
}

/// An independent pair of random Lipschitz payoffs.
pub fn sample_payoff_pair(rng: &mut impl Rng) -> (Payoff, Payoff) {
    let a = sample_lipschitz_payoff(rng);
    let b = sample_lipschitz_payoff(rng);
    (a, b)
}

/// A pointwise-ordered pair `(lo, hi)` with `lo <= hi` everywhere.
pub fn sample_monotone_pair(rng: &mut impl Rng) -> (Payoff, Payoff) {
    let p = sample_lipschitz_payoff(rng);
    let q = sample_lipschitz_payoff(rng);
    if rng.gen_bool(0.5) {
        (Payoff::Min(Box::new(p.clone()), Box::new(q)), p)
    } else {
        (p.clone(), Payoff::Max(Box::new(p), Box::new(q)))
    }
}
