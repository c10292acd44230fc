use ltbarrier::laplace::solve_constant;
use ltbarrier::oracle::{closed_form_gbm_double, closed_form_gbm_single, mc_price};
use ltbarrier::pricing::Pricer;
use ltbarrier::volterra::solve_contract;
use ltbarrier::{BarrierContract, DeltaProfile, Diffusion, Error, Payoff, TimeGrid};

use crate::config::{Method, RunConfig};
use crate::output::{Cell, Report};
use crate::CliError;

/// Nodes at the end of a flagged profile reported as unreliable.
const UNRELIABLE_TAIL: usize = 3;
/// Relative tolerances of `compare` against the closed forms.
const SINGLE_TOL: f64 = 5e-3;
const DOUBLE_TOL: f64 = 1e-2;
/// Image pairs allowed in the double-barrier series.
const SERIES_TERMS: usize = 200;

pub struct Engine {
    pub model: Diffusion,
    pub contract: BarrierContract,
    pub method: Method,
}

impl Engine {
    pub fn new(cfg: &RunConfig) -> Result<Self, CliError> {
        let model = cfg.diffusion()?;
        let contract = cfg.contract();
        contract.validate()?;
        let laplace_ok = model.is_gbm() && contract.has_only_constant_barriers();
        let method = match cfg.run.method {
            Method::Auto if laplace_ok => Method::Laplace,
            Method::Auto => Method::Volterra,
            Method::Laplace if !laplace_ok => {
                return Err(Error::UnsupportedConfiguration(
                    "the laplace method needs a gbm model and constant barriers".into(),
                )
                .into())
            }
            m => m,
        };
        Ok(Self {
            model,
            contract,
            method,
        })
    }

    pub fn solve(&self, n: usize) -> Result<DeltaProfile, CliError> {
        Ok(match self.method {
            Method::Laplace => solve_constant(
                &self.model,
                &self.contract,
                &TimeGrid::uniform(self.contract.maturity, n)?,
            )?,
            _ => solve_contract(&self.model, &self.contract, n)?,
        })
    }

    fn meta(&self, report: &mut Report, n: usize) {
        report.meta("method", self.method);
        report.meta("n", n);
    }
}

fn spots(cfg: &RunConfig) -> Result<&[f64], CliError> {
    if cfg.run.spots.is_empty() {
        return Err(CliError::Config("run.spots is empty".into()));
    }
    Ok(&cfg.run.spots)
}

pub fn price(cfg: &RunConfig) -> Result<Report, CliError> {
    let engine = Engine::new(cfg)?;
    let spots = spots(cfg)?;
    let profile = engine.solve(cfg.run.n)?;
    let pricer = Pricer::new(&engine.model, &engine.contract, &profile)?;
    let mut r = Report::new(
        "price",
        vec![
            "spot",
            "european",
            "premium_lower",
            "premium_upper",
            "price",
            "discount_factor",
            "discounted_price",
            "near_expiry_unreliable",
        ],
    );
    engine.meta(&mut r, cfg.run.n);
    r.meta("warnings", &profile.warnings);
    for &s in spots {
        let p = pricer.price(s)?;
        r.push(vec![
            p.spot.into(),
            p.european.into(),
            p.premium_lower.into(),
            p.premium_upper.into(),
            p.price.into(),
            p.discount_factor.into(),
            p.discounted_price.into(),
            p.near_expiry_unreliable.into(),
        ]);
    }
    Ok(r)
}

pub fn ladder(cfg: &RunConfig) -> Result<Report, CliError> {
    let engine = Engine::new(cfg)?;
    let spots = spots(cfg)?;
    let profile = engine.solve(cfg.run.n)?;
    let l = Pricer::new(&engine.model, &engine.contract, &profile)?.ladder(spots)?;
    let mut r = Report::new("ladder", vec!["spot", "price", "delta", "gamma"]);
    engine.meta(&mut r, cfg.run.n);
    r.meta("discount_factor", l.discount_factor);
    r.meta("near_expiry_unreliable", l.near_expiry_unreliable);
    for i in 0..l.spots.len() {
        r.push(vec![
            l.spots[i].into(),
            l.prices[i].into(),
            l.deltas[i].into(),
            l.gammas[i].into(),
        ]);
    }
    Ok(r)
}

pub fn deltas(cfg: &RunConfig) -> Result<Report, CliError> {
    let engine = Engine::new(cfg)?;
    let profile = engine.solve(cfg.run.n)?;
    let mut r = Report::new("deltas", vec!["t", "delta_plus", "delta_minus", "reliable"]);
    engine.meta(&mut r, cfg.run.n);
    r.meta("near_expiry_unreliable", profile.near_expiry_unreliable);
    r.meta("warnings", &profile.warnings);
    let t = profile.grid().nodes().to_vec();
    let plus = profile.delta_plus();
    let minus = profile.delta_minus();
    let tail = t.len().saturating_sub(UNRELIABLE_TAIL);
    for (i, &ti) in t.iter().enumerate() {
        r.push(vec![
            ti.into(),
            plus.as_ref().map(|v| v[i]).into(),
            minus.as_ref().map(|v| v[i]).into(),
            (!(profile.near_expiry_unreliable && i >= tail)).into(),
        ]);
    }
    Ok(r)
}

/// Largest gap between a coarse profile and the reference at the coarse
/// nodes, over the first 95% of the horizon.
fn profile_gap(coarse: &DeltaProfile, fine: &DeltaProfile) -> f64 {
    let n = coarse.grid().n();
    let stride = fine.grid().n() / n;
    let upto = n * 95 / 100;
    let mut gap = 0.0f64;
    for side in coarse.sides_present() {
        let (a, b) = (coarse.values(side).unwrap(), fine.values(side).unwrap());
        for i in 0..=upto {
            gap = gap.max((a[i] - b[i * stride]).abs());
        }
    }
    gap
}

fn order(e0: f64, e1: f64, n0: usize, n1: usize, floor: f64) -> Option<f64> {
    (e0 > floor && e1 > floor).then(|| (e0 / e1).ln() / (n1 as f64 / n0 as f64).ln())
}

pub fn convergence(cfg: &RunConfig) -> Result<Report, CliError> {
    let engine = Engine::new(cfg)?;
    let s0 = spots(cfg)?[0];
    let ns = &cfg.run.n_list;
    if ns.len() < 2 || ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Config(
            "run.n_list needs at least two ascending grid sizes".into(),
        ));
    }
    let finest = *ns.last().unwrap();
    if let Some(n) = ns.iter().find(|&&n| n == 0 || !finest.is_multiple_of(n)) {
        return Err(CliError::Config(format!(
            "grid size {n} does not divide the reference size {finest}"
        )));
    }
    let mut prices = Vec::with_capacity(ns.len());
    let mut profiles = Vec::with_capacity(ns.len());
    for &n in ns {
        let p = engine.solve(n)?;
        prices.push(
            Pricer::new(&engine.model, &engine.contract, &p)?
                .price(s0)?
                .price,
        );
        profiles.push(p);
    }
    let reference = profiles.last().unwrap();
    let scale = reference
        .sides_present()
        .iter()
        .flat_map(|&s| reference.values(s).unwrap())
        .fold(1.0f64, |m, v| m.max(v.abs()));
    let p_ref = *prices.last().unwrap();
    let price_err: Vec<f64> = prices.iter().map(|p| (p - p_ref).abs()).collect();
    let prof_err: Vec<f64> = profiles.iter().map(|p| profile_gap(p, reference)).collect();
    let price_floor = 1e-12 * p_ref.abs().max(1.0);
    let prof_floor = 1e-9 * scale;

    let mut r = Report::new(
        "convergence",
        vec![
            "n",
            "price",
            "price_error",
            "price_order",
            "profile_error",
            "profile_order",
        ],
    );
    r.meta("method", engine.method);
    r.meta("spot", s0);
    let last = ns.len() - 1;
    for k in 0..ns.len() {
        let next = (k + 1 < last).then_some(k + 1);
        let (err, perr): (Cell, Cell) = if k == last {
            (Cell::Na, Cell::Na)
        } else {
            (price_err[k].into(), prof_err[k].into())
        };
        r.push(vec![
            ns[k].into(),
            prices[k].into(),
            err,
            next.and_then(|j| order(price_err[k], price_err[j], ns[k], ns[j], price_floor))
                .into(),
            perr,
            next.and_then(|j| order(prof_err[k], prof_err[j], ns[k], ns[j], prof_floor))
                .into(),
        ]);
    }
    Ok(r)
}

fn closed_form(engine: &Engine, s0: f64) -> Result<Option<f64>, CliError> {
    let c = &engine.contract;
    let supported = engine.model.is_gbm()
        && c.has_only_constant_barriers()
        && match c.payoff {
            Payoff::Call { .. } | Payoff::Put { .. } => true,
            Payoff::DoubleNoTouch => c.is_double(),
            _ => false,
        };
    if !supported {
        return Ok(None);
    }
    Ok(Some(if c.is_double() {
        closed_form_gbm_double(&engine.model, c, s0, SERIES_TERMS)?.value
    } else {
        closed_form_gbm_single(&engine.model, c, s0)?
    }))
}

/// Engine against the available oracles; `Ok((report, all_passed))`.
pub fn compare(cfg: &RunConfig, seed: Option<u64>) -> Result<(Report, bool), CliError> {
    let engine = Engine::new(cfg)?;
    let spots = spots(cfg)?;
    let profile = engine.solve(cfg.run.n)?;
    let pricer = Pricer::new(&engine.model, &engine.contract, &profile)?;
    let mut mc = cfg.run.oracles.mc.unwrap_or_default();
    if let Some(s) = seed {
        mc.seed = s;
    }
    let tol = if engine.contract.is_double() {
        DOUBLE_TOL
    } else {
        SINGLE_TOL
    };
    let mut r = Report::new(
        "compare",
        vec![
            "spot",
            "engine",
            "closed_form",
            "closed_form_rel_error",
            "mc",
            "mc_std_error",
            "mc_z",
            "pass",
        ],
    );
    engine.meta(&mut r, cfg.run.n);
    r.meta("closed_form_tolerance", tol);
    r.meta("mc", mc);
    let mut all = true;
    for &s in spots {
        let v = pricer.price(s)?.discounted_price;
        let exact = if cfg.run.oracles.closed_form {
            closed_form(&engine, s)?
        } else {
            None
        };
        let rel = exact.map(|e| (v - e).abs() / e.abs().max(1e-12));
        let est = mc_price(&engine.model, &engine.contract, s, &mc.to_core())?;
        let z = (v - est.mean).abs() / est.std_error.max(1e-300);
        let pass = rel.is_none_or(|e| e < tol) && z < 3.0;
        all &= pass;
        r.push(vec![
            s.into(),
            v.into(),
            exact.into(),
            rel.into(),
            est.mean.into(),
            est.std_error.into(),
            z.into(),
            pass.into(),
        ]);
    }
    r.meta("pass", all);
    Ok((r, all))
}

pub fn validate(cfg: &RunConfig) -> Result<Report, CliError> {
    let model = cfg.diffusion()?;
    let contract = cfg.contract();
    let v = contract.validate()?;
    let (lo, hi) = contract.corridor(0.0);
    let mut r = Report::new("validate", vec!["spot", "inside"]);
    r.meta("regime", v.regime);
    r.meta(
        "barriers",
        contract
            .sides()
            .iter()
            .map(|s| s.name())
            .collect::<Vec<_>>(),
    );
    r.meta(
        "laplace_available",
        model.is_gbm() && contract.has_only_constant_barriers(),
    );
    r.meta("warnings", &v.warnings);
    for &s in &cfg.run.spots {
        r.push(vec![s.into(), (s > lo && s < hi).into()]);
    }
    Ok(r)
}
