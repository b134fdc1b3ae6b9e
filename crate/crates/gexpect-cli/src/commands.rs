//! Command implementations. Each returns a payload (a JSON value/gap map or
//! a CSV document) plus its exit code; `main` wraps the payload into the
//! final report envelope.

use std::collections::BTreeMap;
use std::time::Instant;

use clap::ValueEnum;
use gexpect::extension::{
    counterexample_run, dominated_extend, extend_down, extend_up, Direction, DoubleScheme, Engine,
    ExtensionResult,
};
use gexpect::measures::{self, DEFAULT_SELECTION_CAP};
use gexpect::pde::{expect_cylinder, expect_gnormal};
use gexpect::sampling;
use gexpect::stopping::{dyadic_stop_gaps, optional_stopping_check, StoppingRule};
use gexpect::tree::StateSpace;
use gexpect::{backward_induct, condition_at, expect, Error, Payoff, Result, VolatilityGrid};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::spec::{parse_event, parse_payoff, parse_scheme, parse_set};

/// Gap checks failed against `--gap-tol`.
pub const EXIT_GAP: i32 = 3;

pub enum Payload {
    Report {
        values: BTreeMap<String, Value>,
        gaps: BTreeMap<String, f64>,
        iterations: Option<u64>,
    },
    Csv(String),
}

pub struct CmdResult {
    pub payload: Payload,
    pub exit: i32,
}

fn report(
    values: BTreeMap<String, Value>,
    gaps: BTreeMap<String, f64>,
    iterations: Option<u64>,
    exit: i32,
) -> CmdResult {
    CmdResult {
        payload: Payload::Report {
            values,
            gaps,
            iterations,
        },
        exit,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EngineChoice {
    Tree,
    Pde,
    Both,
}

/// The cheapest state space able to evaluate the payoff.
fn needed_space(p: &Payoff) -> StateSpace {
    if p.position_only() {
        StateSpace::Position
    } else if p.terminal_only() {
        StateSpace::PositionQv
    } else {
        StateSpace::Paths
    }
}

fn pde_value(cfg: &RunConfig, p: &Payoff) -> Result<f64> {
    let coef = cfg.coefficients()?;
    let grid = cfg.grid1d()?;
    match p {
        Payoff::Cylinder { times, func } => expect_cylinder(coef, times, *func, &grid),
        _ => expect_gnormal(coef, p, cfg.tree.horizon, &grid),
    }
}

pub fn expect_cmd(
    cfg: &RunConfig,
    payoff_spec: &str,
    t: Option<f64>,
    engine: EngineChoice,
    n: Option<usize>,
) -> Result<CmdResult> {
    let p = parse_payoff(payoff_spec)?;
    let mut values = BTreeMap::new();
    let mut gaps = BTreeMap::new();
    values.insert("payoff".into(), json!(payoff_spec));

    let mut tree_value = None;
    if engine != EngineChoice::Pde {
        let tree = cfg.build_tree(n, cfg.resolve_space(needed_space(&p)))?;
        if let Some(t) = t {
            let fields = backward_induct(&tree, &p)?;
            let field = condition_at(&tree, &fields, t)?;
            values.insert("conditional_level".into(), json!(field.level()));
            values.insert("conditional".into(), json!(field.values()));
            tree_value = Some(fields[0].get(0));
        } else {
            tree_value = Some(expect(&tree, &p)?);
        }
        values.insert("tree".into(), json!(tree_value.unwrap()));
    } else if t.is_some() {
        return Err(Error::UnsupportedConditional);
    }

    if engine != EngineChoice::Tree {
        let v = pde_value(cfg, &p)?;
        values.insert("pde".into(), json!(v));
        if let Some(tv) = tree_value {
            gaps.insert("cross_engine".into(), (tv - v).abs());
        }
    }
    Ok(report(values, gaps, None, 0))
}

pub fn capacity_cmd(cfg: &RunConfig, event_spec: &str, n: Option<usize>) -> Result<CmdResult> {
    let event = parse_event(event_spec)?;
    let tree = cfg.build_tree(Some(n.unwrap_or(3)), StateSpace::Paths)?;
    let (value, argmax) = measures::capacity(&tree, &event, DEFAULT_SELECTION_CAP)?;
    let mut values = BTreeMap::new();
    values.insert("event".into(), json!(event_spec));
    values.insert("capacity".into(), json!(value));
    values.insert("argmax_root_choice".into(), json!(argmax.get(0, 0)));
    values.insert(
        "selections".into(),
        json!(measures::selection_count(&tree)?.to_string()),
    );
    Ok(report(values, BTreeMap::new(), None, 0))
}

pub fn represent_cmd(
    cfg: &RunConfig,
    payoffs: usize,
    t: Option<f64>,
    n: Option<usize>,
    gap_tol: f64,
) -> Result<CmdResult> {
    let tree = cfg.build_tree(Some(n.unwrap_or(3)), StateSpace::Paths)?;
    let level = t.map(|t| tree.level_of_time(t)).transpose()?;
    let mut rng = sampling::rng_from_seed(cfg.seed);
    let mut worst: f64 = 0.0;
    let mut nodes = 0usize;
    for _ in 0..payoffs {
        let p = sampling::sample_lipschitz_payoff(&mut rng);
        match level {
            Some(level) => {
                let gaps = measures::representation_gaps(&tree, &p, level, DEFAULT_SELECTION_CAP)?;
                worst = gaps.iter().fold(worst, |w, g| w.max(*g));
                nodes += gaps.len();
            }
            None => {
                let rep = measures::verify_representation(&tree, &p, DEFAULT_SELECTION_CAP)?;
                worst = worst.max(rep.max_gap);
                nodes += rep.checked_nodes;
            }
        }
    }
    let mut values = BTreeMap::new();
    values.insert("payoffs".into(), json!(payoffs));
    if let Some(level) = level {
        values.insert("level".into(), json!(level));
    }
    values.insert("nodes_checked".into(), json!(nodes));
    values.insert("max_gap".into(), json!(worst));
    let mut gaps = BTreeMap::new();
    gaps.insert("representation".into(), worst);
    let exit = if worst > gap_tol { EXIT_GAP } else { 0 };
    Ok(report(values, gaps, None, exit))
}

pub fn extend_cmd(
    cfg: &RunConfig,
    scheme_spec: &str,
    engine: EngineChoice,
    n: Option<usize>,
) -> Result<CmdResult> {
    let scheme = parse_scheme(scheme_spec)?;
    let tol = cfg.extension.tolerance;
    let max_k = cfg.extension.max_k;

    let run_on = |eng: &Engine<'_>| -> Result<ExtensionResult<f64>> {
        match scheme.direction() {
            Direction::Down => extend_down(eng, &scheme, tol, max_k),
            Direction::Up if scheme.is_up_from_negated_down() => {
                dominated_extend(eng, &scheme, tol, max_k)
            }
            Direction::Up => {
                let double = DoubleScheme::from_up_family(&scheme)?;
                extend_up(eng, &double, tol, max_k)
            }
        }
    };

    let run = match engine {
        EngineChoice::Tree => {
            let probe = scheme.payoff_at(1)?;
            let tree = cfg.build_tree(n, cfg.resolve_space(needed_space(&probe)))?;
            run_on(&Engine::Tree(&tree))?
        }
        EngineChoice::Pde => run_on(&Engine::Pde {
            coef: cfg.coefficients()?,
            grid: cfg.grid1d()?,
            horizon: cfg.tree.horizon,
        })?,
        EngineChoice::Both => {
            return Err(Error::InvalidParameter(
                "extend runs on one engine at a time".into(),
            ))
        }
    };

    let mut values = BTreeMap::new();
    values.insert("scheme".into(), json!(scheme_spec));
    values.insert("limit".into(), json!(run.limit));
    values.insert("converged".into(), json!(run.converged));
    values.insert("ks".into(), json!(run.ks));
    values.insert("values".into(), json!(run.values));
    values.insert("successive".into(), json!(run.successive));
    Ok(report(
        values,
        BTreeMap::new(),
        Some(run.iterations as u64),
        0,
    ))
}

pub fn stop_cmd(
    cfg: &RunConfig,
    exit_spec: &str,
    payoff_spec: &str,
    ns: &[u32],
    n: Option<usize>,
    gap_tol: f64,
) -> Result<CmdResult> {
    let set = parse_set(exit_spec)?;
    let xi = parse_payoff(payoff_spec)?;
    let n_steps = n.unwrap_or(8);
    let tree = cfg.build_tree(Some(n_steps), StateSpace::Paths)?;

    let tau = StoppingRule::exit_time(&tree, &set);
    let sigma = tau.min(&StoppingRule::at_level(&tree, tree.n_steps() / 2)?)?;
    let check = optional_stopping_check(&tree, &xi, &sigma, &tau)?;

    let ns: Vec<u32> = if ns.is_empty() {
        (1..=3)
            .filter(|&k| {
                let slots = 1usize << k;
                tree.n_steps() % slots == 0 && slots <= tree.n_steps()
            })
            .collect()
    } else {
        ns.to_vec()
    };
    let reports = dyadic_stop_gaps(&tree, &xi, &set, &ns)?;

    let mut values = BTreeMap::new();
    values.insert("exit_set".into(), json!(exit_spec));
    values.insert("payoff".into(), json!(payoff_spec));
    values.insert("max_gap".into(), json!(check.max_gap));
    values.insert("stop_gap".into(), json!(check.stop_gap));
    values.insert("per_level".into(), json!(check.per_level));
    values.insert(
        "dyadic".into(),
        Value::Array(
            reports
                .iter()
                .map(|r| {
                    json!({
                        "n": r.n,
                        "coarse_levels": r.coarse_levels,
                        "gap": r.gap,
                        "max_overshoot_levels": r.max_overshoot_levels,
                    })
                })
                .collect(),
        ),
    );
    let mut gaps = BTreeMap::new();
    gaps.insert("optional_stopping".into(), check.max_gap);
    gaps.insert("stop_consistency".into(), check.stop_gap);
    let exit = if check.max_gap > gap_tol { EXIT_GAP } else { 0 };
    Ok(report(values, gaps, None, exit))
}

pub fn counterexample_cmd(cfg: &RunConfig, band_n: u64, n: Option<usize>) -> Result<CmdResult> {
    if band_n == 0 {
        return Err(Error::InvalidParameter("band index must be positive".into()));
    }
    let coef = cfg.coefficients()?;
    let hi = coef.sigma_high_sq();
    let lo = hi - 1.0 / band_n as f64;
    let mut grid = cfg.volatility_grid()?;
    let mut inserted = false;
    if !coef.is_degenerate() && grid.band_point(lo, hi).is_none() {
        let mid = (hi - 0.5 / band_n as f64).sqrt();
        let mut sigmas = grid.sigmas().to_vec();
        sigmas.push(mid);
        sigmas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        grid = VolatilityGrid::new(coef, sigmas)?;
        inserted = true;
    }
    let (e1, e2) = counterexample_run(coef, &grid, band_n, n.unwrap_or(8))?;
    let mut values = BTreeMap::new();
    values.insert("band_lo".into(), json!(lo));
    values.insert("band_hi".into(), json!(hi));
    values.insert("band_volatility_inserted".into(), json!(inserted));
    values.insert("lower_of_band_indicator".into(), json!(e1));
    values.insert("lower_of_zero_limit".into(), json!(e2));
    Ok(report(values, BTreeMap::new(), None, 0))
}

pub fn convergence_cmd(cfg: &RunConfig, payoff_spec: &str) -> Result<CmdResult> {
    let p = parse_payoff(payoff_spec)?;
    if !p.position_only() {
        return Err(Error::InvalidParameter(
            "convergence sweeps need a payoff of the terminal position".into(),
        ));
    }
    let coef = cfg.coefficients()?;
    let grid = cfg.grid1d()?;

    let mut csv = String::from("method,resolution,value,gap,runtime_ms\n");
    let t0 = Instant::now();
    let reference = expect_gnormal(coef, &p, cfg.tree.horizon, &grid)?;
    let pde_ms = t0.elapsed().as_millis();
    csv.push_str(&format!("pde,{},{},0,{}\n", grid.dx(), reference, pde_ms));

    for n in [32usize, 64, 128, 256] {
        let t0 = Instant::now();
        let tree = cfg.build_tree(Some(n), cfg.resolve_space(StateSpace::Position))?;
        let value = expect(&tree, &p)?;
        let ms = t0.elapsed().as_millis();
        let gap = (value - reference).abs();
        csv.push_str(&format!("tree,{n},{value},{gap},{ms}\n"));
    }
    Ok(CmdResult {
        payload: Payload::Csv(csv),
        exit: 0,
    })
}
