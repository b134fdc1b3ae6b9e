//! Compact spec strings for payoffs, events, schemes and interval sets, so
//! runs are expressible on the command line: `call:0.5`, `qv_band:0.75,1.0`,
//! `pos_in:[0.4,inf)`, `envdown:[0,inf)`, `cyl:0.25,0.5:prod`.

use gexpect::extension::MonotoneScheme;
use gexpect::measures::TreeEvent;
use gexpect::{Coord, CylinderFn, Error, IntervalUnion, Payoff, Result};

fn bad(what: &str, s: &str) -> Error {
    Error::InvalidParameter(format!("cannot parse {what} spec '{s}'"))
}

fn num(tok: &str, what: &str, s: &str) -> Result<f64> {
    tok.trim().parse::<f64>().map_err(|_| bad(what, s))
}

fn nums(tok: &str, what: &str, s: &str) -> Result<Vec<f64>> {
    tok.split(',').map(|t| num(t, what, s)).collect()
}

fn index(tok: &str, what: &str, s: &str) -> Result<usize> {
    tok.trim().parse::<usize>().map_err(|_| bad(what, s))
}

/// Interval unions: `[a,b]`, `(0,inf)`, joined with `u`. Endpoint brackets
/// are decorative; the set itself is read closed, and open/closed behavior
/// comes from the consumer (an open envelope, a band payoff).
pub fn parse_set(s: &str) -> Result<IntervalUnion> {
    let mut parts = Vec::new();
    for raw in s.split('u') {
        let tok = raw
            .trim()
            .trim_start_matches(['[', '('])
            .trim_end_matches([']', ')']);
        let ends = nums(tok, "set", s)?;
        if ends.len() != 2 {
            return Err(bad("set", s));
        }
        parts.push((ends[0], ends[1]));
    }
    IntervalUnion::new(parts)
}

pub fn parse_payoff(s: &str) -> Result<Payoff> {
    let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
    match kind {
        "const" => Ok(Payoff::Constant(num(rest, "payoff", s)?)),
        "call" => Ok(Payoff::Call {
            strike: num(rest, "payoff", s)?,
        }),
        "put" => Ok(Payoff::Put {
            strike: num(rest, "payoff", s)?,
        }),
        "square" => Ok(Payoff::Square),
        "square_clamped" => Ok(Payoff::SquareClamped {
            cap: num(rest, "payoff", s)?,
        }),
        "identity" => Ok(Payoff::Identity),
        "abs" => Ok(Payoff::Abs),
        "digital_ge" => Ok(Payoff::DigitalGe {
            threshold: num(rest, "payoff", s)?,
        }),
        "qv_identity" => Ok(Payoff::QvIdentity),
        "qv_band" => {
            let ends = nums(rest, "payoff", s)?;
            if ends.len() != 2 {
                return Err(bad("payoff", s));
            }
            Ok(Payoff::QvBand {
                lo: ends[0],
                hi: ends[1],
            })
        }
        "envc" | "envc_qv" | "envo" | "envo_qv" => {
            let (set_tok, sharp_tok) = rest.split_once(':').ok_or_else(|| bad("payoff", s))?;
            let set = parse_set(set_tok)?;
            let sharpness = num(sharp_tok, "payoff", s)?;
            let coord = if kind.ends_with("_qv") {
                Coord::QuadVar
            } else {
                Coord::Position
            };
            if kind.starts_with("envc") {
                Payoff::envelope_closed(set, sharpness, coord)
            } else {
                Payoff::envelope_open(set, sharpness, coord)
            }
        }
        "cyl" => {
            let (times_tok, func_tok) = rest.split_once(':').ok_or_else(|| bad("payoff", s))?;
            let times = nums(times_tok, "payoff", s)?;
            let (fk, fargs) = func_tok.split_once(':').unwrap_or((func_tok, ""));
            let func = match fk {
                "prod" => CylinderFn::Product,
                "coord" => CylinderFn::Coordinate(index(fargs, "payoff", s)?),
                "incr" | "sqincr" => {
                    let ij: Vec<&str> = fargs.split(',').collect();
                    if ij.len() != 2 {
                        return Err(bad("payoff", s));
                    }
                    let base = index(ij[0], "payoff", s)?;
                    let upper = index(ij[1], "payoff", s)?;
                    if fk == "incr" {
                        CylinderFn::ScaledIncrement { base, upper }
                    } else {
                        CylinderFn::SquaredIncrement { base, upper }
                    }
                }
                _ => return Err(bad("payoff", s)),
            };
            Payoff::cylinder(times, func)
        }
        _ => Err(bad("payoff", s)),
    }
}

pub fn parse_event(s: &str) -> Result<TreeEvent> {
    let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
    match kind {
        "all" => Ok(TreeEvent::all()),
        "none" => Ok(TreeEvent::none()),
        "pos_ge" => Ok(TreeEvent::position_in(IntervalUnion::ray_from(num(
            rest, "event", s,
        )?))),
        "pos_eq" => Ok(TreeEvent::position_eq(num(rest, "event", s)?)),
        "pos_in" => Ok(TreeEvent::position_in(parse_set(rest)?)),
        "qv_in" => Ok(TreeEvent::qv_in(parse_set(rest)?)),
        "pos_at_in" => {
            let (t_tok, set_tok) = rest.split_once(':').ok_or_else(|| bad("event", s))?;
            Ok(TreeEvent::position_at_in(
                num(t_tok, "event", s)?,
                parse_set(set_tok)?,
            ))
        }
        _ => Err(bad("event", s)),
    }
}

pub fn parse_scheme(s: &str) -> Result<MonotoneScheme> {
    let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
    let coord_of = |tail: &str| {
        if tail.ends_with(":qv") {
            (Coord::QuadVar, tail.trim_end_matches(":qv").to_string())
        } else {
            (Coord::Position, tail.to_string())
        }
    };
    // `envdown:closed:SET` / `envup:open:SET` spell out the closure the kind
    // already implies; the tag is accepted only when it matches.
    let strip_closure = |tail: &str, implied: &str| -> Result<String> {
        match tail.split_once(':') {
            Some((tag, set_tok)) if tag == "closed" || tag == "open" => {
                if tag == implied {
                    Ok(set_tok.to_string())
                } else {
                    Err(bad("scheme", s))
                }
            }
            _ => Ok(tail.to_string()),
        }
    };
    match kind {
        "envdown" => {
            let (coord, set_tok) = coord_of(&strip_closure(rest, "closed")?);
            Ok(MonotoneScheme::envelope_closed_family(
                parse_set(&set_tok)?,
                coord,
            ))
        }
        "envup" => {
            let (coord, set_tok) = coord_of(&strip_closure(rest, "open")?);
            Ok(MonotoneScheme::envelope_open_family(
                parse_set(&set_tok)?,
                coord,
            ))
        }
        "negdown" => {
            let (coord, set_tok) = coord_of(rest);
            let down = MonotoneScheme::envelope_closed_family(parse_set(&set_tok)?, coord);
            MonotoneScheme::up_from_negated_down(&down)
        }
        "const" => Ok(MonotoneScheme::constant(
            format!("constant {rest}"),
            parse_payoff(rest)?,
        )),
        _ => Err(bad("scheme", s)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gexpect::extension::Direction;
    use gexpect::PathState;

    #[test]
    fn parses_sets_with_unions_and_rays() {
        let u = parse_set("[-0.35,0.35]").unwrap();
        assert_eq!(u.parts(), &[(-0.35, 0.35)]);
        let u = parse_set("[0.5,inf)").unwrap();
        assert!(u.contains(1e12));
        let u = parse_set("[-1,0]u[2,3]").unwrap();
        assert_eq!(u.parts().len(), 2);
        assert!(parse_set("[1,2,3]").is_err());
        assert!(parse_set("").is_err());
    }

    #[test]
    fn parses_payoffs() {
        let s = PathState::terminal(2.0, 0.8);
        assert_eq!(parse_payoff("call:1.5").unwrap().eval(&s).unwrap(), 0.5);
        assert_eq!(parse_payoff("square").unwrap().eval(&s).unwrap(), 4.0);
        assert_eq!(
            parse_payoff("qv_band:0.75,1.0").unwrap().eval(&s).unwrap(),
            1.0
        );
        assert_eq!(
            parse_payoff("digital_ge:2.0").unwrap().eval(&s).unwrap(),
            1.0
        );
        assert!(parse_payoff("cyl:0.25,0.5:prod").is_ok());
        assert!(parse_payoff("cyl:0.25,0.5:incr:0,1").is_ok());
        assert!(parse_payoff("envc:[0,inf):2.0").is_ok());
        assert!(parse_payoff("frobnicate:1").is_err());
        assert!(parse_payoff("call:sideways").is_err());
    }

    #[test]
    fn parses_events_and_schemes() {
        let s = PathState::terminal(0.5, 0.3);
        assert!(parse_event("pos_ge:0.4").unwrap().holds(&s));
        assert!(!parse_event("none").unwrap().holds(&s));
        assert!(parse_event("pos_at_in:0.5:[0,1]").is_ok());
        assert!(parse_event("qv_elsewhere:1").is_err());

        assert_eq!(
            parse_scheme("envdown:[0,inf)").unwrap().direction(),
            Direction::Down
        );
        assert_eq!(
            parse_scheme("envup:(0,inf)").unwrap().direction(),
            Direction::Up
        );
        let neg = parse_scheme("negdown:[0,inf)").unwrap();
        assert!(neg.is_up_from_negated_down());
        assert!(parse_scheme("const:call:0.5").is_ok());
        assert!(parse_scheme("envdown:[0,1]:qv").is_ok());
        assert_eq!(
            parse_scheme("envdown:closed:[0,inf)").unwrap().direction(),
            Direction::Down
        );
        assert!(parse_scheme("envup:open:(0,inf):qv").is_ok());
        assert!(parse_scheme("envdown:open:[0,inf)").is_err());
        assert!(parse_scheme("envup:closed:(0,inf)").is_err());
        assert!(parse_scheme("wayup:[0,1]").is_err());
    }
}
