//! Experiment runners. Each produces one CSV report whose rows are a pure
//! function of the config; only the timestamp comment line varies between
//! reruns.

use crate::config::{ExperimentConfig, ExperimentKind, ResolvedPlan};
use anyhow::{anyhow, Result};
use rand::Rng;
use std::fmt::Write as _;
use std::time::{SystemTime, UNIX_EPOCH};
use tracerecon::channel::{generate_ensemble, AssumptionTag, ChannelKind};
use tracerecon::estimate::{estimate_all, reconstruct_unknown_record};
use tracerecon::genfunc::{psi_eval, psi_tilde_eval, PeriodicMap, SignedInput};
use tracerecon::reconstruct::{reconstruct_exhaustive_record, DEFAULT_CANDIDATE_BUDGET};
use tracerecon::rng::{self, STAGE_PROBE};
use tracerecon::separation::{check_product_lower_bound, fit_arc_constant, Arc};

fn header(cfg: &ExperimentConfig) -> String {
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!(
        "# kind={} config={}\n# timestamp_unix={stamp}\n",
        cfg.kind.as_str(),
        cfg.stable_hash()
    )
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<String> {
    let plan = cfg.validate()?;
    match cfg.kind {
        ExperimentKind::ReconKnown => run_recon_known(cfg, &plan),
        ExperimentKind::ReconUnknown => run_recon_unknown(cfg, &plan),
        ExperimentKind::EstimatorError => run_estimator_error(cfg, &plan),
        ExperimentKind::ArcScan => run_arc_scan(cfg, &plan),
        ExperimentKind::BoundCheck => run_bound_check(cfg, &plan),
    }
}

fn run_recon_known(cfg: &ExperimentConfig, plan: &ResolvedPlan) -> Result<String> {
    let mut out = header(cfg);
    out.push_str("n,m,t,seed,success,samples,rounds\n");
    for &seed in &cfg.seeds {
        let x = cfg.input_for_seed(seed);
        for &t in &plan.t_list {
            let ens = generate_ensemble(&x, &plan.spec, t as usize, seed)?;
            let record =
                reconstruct_exhaustive_record(&ens, &plan.spec, cfg.n, cfg.m, DEFAULT_CANDIDATE_BUDGET)?;
            writeln!(
                out,
                "{},{},{t},{seed},{},{},{}",
                cfg.n,
                cfg.m,
                u8::from(record.estimate == x),
                record.samples_used,
                record.rounds.len()
            )?;
        }
    }
    Ok(out)
}

fn run_recon_unknown(cfg: &ExperimentConfig, plan: &ResolvedPlan) -> Result<String> {
    let floor = cfg.delta_floor.expect("validated");
    let truth = plan.spec.retention().to_vec();
    let mut out = header(cfg);
    let seeds: Vec<String> = cfg.seeds.iter().map(u64::to_string).collect();
    writeln!(out, "# manifest seeds={} delta_floor={floor}", seeds.join(","))?;
    out.push_str("n,m,t,seed,success,p_star_hat,max_abs_p_err\n");
    for &seed in &cfg.seeds {
        let x = cfg.input_for_seed(seed);
        for &t in &plan.t_list {
            let ens = generate_ensemble(&x, &plan.spec, t as usize, seed)?;
            let run = reconstruct_unknown_record(&ens, cfg.n, cfg.m, floor, DEFAULT_CANDIDATE_BUDGET)?;
            let max_err = run
                .report
                .letters()
                .iter()
                .map(|e| (e.p_hat - truth[e.letter as usize]).abs())
                .fold(0.0f64, f64::max);
            writeln!(
                out,
                "{},{},{t},{seed},{},{},{max_err}",
                cfg.n,
                cfg.m,
                u8::from(run.record.estimate == x),
                run.report.p_star_hat()
            )?;
        }
    }
    Ok(out)
}

fn run_estimator_error(cfg: &ExperimentConfig, plan: &ResolvedPlan) -> Result<String> {
    let floor = cfg.delta_floor.unwrap_or(1e-6);
    let truth = plan.spec.retention().to_vec();
    let mut out = header(cfg);
    out.push_str("n,m,t,seed,letter,mu_hat,v_hat,p_hat,clamped,abs_err\n");
    for &seed in &cfg.seeds {
        let x = cfg.input_for_seed(seed);
        for &t in &plan.t_list {
            let ens = generate_ensemble(&x, &plan.spec, t as usize, seed)?;
            let report = estimate_all(&ens, floor)?;
            for e in report.letters() {
                writeln!(
                    out,
                    "{},{},{t},{seed},{},{},{},{},{},{}",
                    cfg.n,
                    cfg.m,
                    e.letter,
                    e.mu_hat,
                    e.v_hat,
                    e.p_hat,
                    u8::from(e.clamped),
                    (e.p_hat - truth[e.letter as usize]).abs()
                )?;
            }
        }
    }
    Ok(out)
}

fn run_arc_scan(cfg: &ExperimentConfig, plan: &ResolvedPlan) -> Result<String> {
    let l_list = cfg.l_list.as_ref().expect("validated");
    let draws = cfg.draws.expect("validated") as usize;
    let report = fit_arc_constant(
        plan.spec.retention(),
        l_list,
        draws,
        cfg.seeds[0],
        plan.grid_points,
    )?;
    let mut out = header(cfg);
    writeln!(
        out,
        "# c={} intercept={} trials={} grid_points={}",
        report.c, report.intercept, report.trials, report.grid_points
    )?;
    out.push_str(&report.to_csv());
    Ok(out)
}

/// Random interior point of the disc with |w| <= 0.99.
fn interior_point<R: Rng>(r: &mut R) -> num_complex::Complex64 {
    let radius = 0.99 * r.gen::<f64>();
    let angle = r.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
    num_complex::Complex64::from_polar(radius, angle)
}

fn random_weights<R: Rng>(r: &mut R, n: usize) -> SignedInput {
    SignedInput::new((0..n).map(|_| r.gen_range(-1.0..=1.0)).collect()).expect("weights in range")
}

fn run_bound_check(cfg: &ExperimentConfig, plan: &ResolvedPlan) -> Result<String> {
    let draws = cfg.draws.expect("validated") as usize;
    let seed = cfg.seeds[0];
    let retention = plan.spec.retention().to_vec();
    let n = cfg.n;
    let mut out = header(cfg);
    out.push_str("check,points,worst,pass\n");

    // |p w + q|^2 against 1 - 2 p (1 - p)(1 - cos theta) on the unit circle
    let mut worst = 0.0f64;
    for i in 0..draws {
        let mut r = rng::substream(seed, STAGE_PROBE, i as u64);
        let p: f64 = r.gen();
        let theta = r.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        let w = num_complex::Complex64::from_polar(1.0, theta);
        let direct = (p * w + (1.0 - p)).norm_sqr();
        let closed = tracerecon::separation::factor_modulus_sq(p, theta);
        worst = worst.max((direct - closed).abs());
    }
    writeln!(out, "modulus_identity,{draws},{worst},{}", u8::from(worst <= 1e-12))?;

    match plan.assumption {
        AssumptionTag::WeakMonotone { delta } => {
            // |Psi(w)| <= 1 / (delta (1 - |w|)) inside the disc
            let mut worst = f64::NEG_INFINITY;
            for i in 0..draws {
                let mut r = rng::substream(seed, STAGE_PROBE, (draws + i) as u64);
                let a = random_weights(&mut r, n);
                let w = interior_point(&mut r);
                let value = psi_eval(&a, &retention, w)?.norm();
                let bound = 1.0 / (delta * (1.0 - w.norm()));
                worst = worst.max(value - bound);
            }
            writeln!(out, "disc_bound,{draws},{worst},{}", u8::from(worst <= 1e-12))?;
        }
        AssumptionTag::TwoPeriodic { q, q_tilde } => {
            // |mapped polynomial(z)| <= 1 / (p_star (1 - |z|)) inside the disc
            let (lo, hi) = ((1.0 - q).min(1.0 - q_tilde), (1.0 - q).max(1.0 - q_tilde));
            let map = PeriodicMap::new(lo, hi)?;
            let mut worst = f64::NEG_INFINITY;
            for i in 0..draws {
                let mut r = rng::substream(seed, STAGE_PROBE, (draws + i) as u64);
                let a = random_weights(&mut r, n);
                let z = interior_point(&mut r);
                let value = psi_tilde_eval(&a, &retention, z, &map)?.norm();
                let bound = 1.0 / (map.p_star() * (1.0 - z.norm()));
                worst = worst.max(value - bound);
            }
            writeln!(out, "periodic_disc_bound,{draws},{worst},{}", u8::from(worst <= 1e-12))?;
        }
        AssumptionTag::None => {}
    }

    if plan.spec.kind() == ChannelKind::PositionVarying {
        if let Some(l_list) = &cfg.l_list {
            for &l in l_list {
                let arc = Arc::new(l, plan.grid_points)?;
                let mut worst = f64::INFINITY;
                for len in 1..=n {
                    let report = check_product_lower_bound(&retention[..len], &arc)?;
                    worst = worst.min(report.margin);
                }
                writeln!(
                    out,
                    "product_bound_l{l},{},{worst},{}",
                    plan.grid_points * n,
                    u8::from(worst >= 0.0)
                )?;
            }
        }
    }
    Ok(out)
}

/// Rows of a report with its parsed comment header.
#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub kind: String,
    pub config: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn parse_report(text: &str) -> Result<Report> {
    let mut kind = None;
    let mut config = None;
    let mut columns = None;
    let mut rows = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            for field in rest.split_whitespace() {
                if let Some(v) = field.strip_prefix("kind=") {
                    kind = Some(v.to_string());
                } else if let Some(v) = field.strip_prefix("config=") {
                    config = Some(v.to_string());
                }
            }
            continue;
        }
        let cells: Vec<String> = line.split(',').map(|c| c.trim().to_string()).collect();
        match &columns {
            None => columns = Some(cells),
            Some(cols) => {
                if cells.len() != cols.len() {
                    return Err(anyhow!(
                        "row has {} cells, header has {}",
                        cells.len(),
                        cols.len()
                    ));
                }
                rows.push(cells);
            }
        }
    }
    Ok(Report {
        kind: kind.ok_or_else(|| anyhow!("report lacks a '# kind=' line"))?,
        config: config.ok_or_else(|| anyhow!("report lacks a 'config=' field"))?,
        columns: columns.ok_or_else(|| anyhow!("report lacks a column header"))?,
        rows,
    })
}
