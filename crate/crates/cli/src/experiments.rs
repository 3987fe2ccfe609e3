//! One function per subcommand: compute, then render result files in
//! memory. Nothing here touches the filesystem.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use mobserv::metastability::{default_threshold, equilibrium_comparison, metastable_lifetime};
use mobserv::nlmp::{
    absorption_time_closed_form, absorption_times, curve_maximum, expected_visits, find_eta_roots,
    lambda_of_eta, monte_carlo_absorption, nu_quadratic_roots, rates_from_eta, uniform_eta_grid,
};
use mobserv::rng::{derive_seed, rng_from_seed};
use mobserv::sim::{
    estimate_drift, simulate, write_event_log_csv, write_trajectory_csv, DriftOptions, Horizon, NetworkState,
    SimConfig,
};
use mobserv::transit::{
    brute_force_result, closed_form_p, closed_form_result, critical_size, monte_carlo_p, DestinationMap,
};
use mobserv::GraphTopology;
use serde::Serialize;
use serde_json::json;

use crate::spec::*;
use crate::RunnerError;

/// Stream index for setup randomness (initial states, destination maps),
/// disjoint from the per-run streams `0, 1, ...`.
const SETUP_STREAM: u64 = u64::MAX - 1;

/// Rendered outputs of one experiment.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    /// `(file name, contents)` in write order.
    pub files: Vec<(String, Vec<u8>)>,
    /// Headline numbers, merged into sweep tables.
    pub summary: BTreeMap<String, f64>,
    /// Human-readable lines for the summary file.
    pub text: String,
}

impl Artifacts {
    fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), RunnerError> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.files.push((name.into(), bytes));
        Ok(())
    }

    fn csv<F>(&mut self, name: &str, header: &[&str], fill: F) -> Result<(), RunnerError>
    where
        F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> Result<(), csv::Error>,
    {
        let mut buf = Vec::new();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(header)?;
            fill(&mut w)?;
            w.flush().map_err(csv::Error::from)?;
        }
        self.files.push((name.into(), buf));
        Ok(())
    }

    fn metric(&mut self, key: &str, value: f64) {
        self.summary.insert(key.into(), value);
        let _ = writeln!(self.text, "{key} = {value}");
    }

    fn note(&mut self, line: impl AsRef<str>) {
        let _ = writeln!(self.text, "{}", line.as_ref());
    }
}

/// Run the experiment described by `spec` (assumed validated).
pub fn execute(spec: &ExperimentSpec) -> Result<Artifacts, RunnerError> {
    let seed = spec.seed;
    match &spec.experiment {
        Experiment::Simulate(p) => run_simulate(p, seed),
        Experiment::Transit(p) => run_transit(p, seed),
        Experiment::NlmpCurve(p) => run_curve(p),
        Experiment::NlmpRoots(p) => run_roots(p),
        Experiment::Absorption(p) => run_absorption(p, seed),
        Experiment::Lifetime(p) => run_lifetime(p, seed),
        Experiment::Compare(p) => run_compare(p, seed),
        Experiment::Drift(p) => run_drift(p, seed),
    }
}

fn sim_config(graph: GraphTopology, lambda: f64, beta: f64, replicas: usize, seed: u64) -> SimConfig {
    SimConfig::new(graph, lambda, beta).with_replicas(replicas).with_seed(seed)
}

fn run_simulate(p: &SimulateParams, seed: u64) -> Result<Artifacts, RunnerError> {
    let mut cfg = sim_config(p.graph.build()?, p.lambda, p.beta, p.replicas, seed)
        .with_horizon(Horizon::Time(p.horizon));
    cfg.record_interval = p.record_interval;
    cfg.record_events = p.event_log;
    let mut state = NetworkState::uniform_level(&cfg.topology, p.replicas, p.initial_level);
    state.randomize_destinations(&cfg.topology, &mut rng_from_seed(derive_seed(seed, SETUP_STREAM)));
    let traj = simulate(&cfg, state)?;

    let mut art = Artifacts::default();
    let mut buf = Vec::new();
    write_trajectory_csv(&traj, &mut buf)?;
    art.files.push(("trajectory.csv".into(), buf));
    if p.event_log {
        let mut buf = Vec::new();
        write_event_log_csv(&traj, &mut buf)?;
        art.files.push(("events.csv".into(), buf));
    }
    let last = traj.sample_count().saturating_sub(1);
    let final_lengths = if traj.sample_count() > 0 { traj.snapshot(last) } else { traj.initial_lengths.clone() };
    let mean_final = final_lengths.iter().map(|&l| l as f64).sum::<f64>() / final_lengths.len().max(1) as f64;
    art.json(
        "result.json",
        &json!({
            "graph": p.graph.label(),
            "final_time": traj.final_time,
            "samples": traj.sample_count(),
            "event_counts": traj.event_counts,
            "final_mean_queue": mean_final,
        }),
    )?;
    art.note(format!("simulated {} to t = {}", p.graph.label(), traj.final_time));
    art.metric("events", traj.event_counts.total() as f64);
    art.metric("final_mean_queue", mean_final);
    Ok(art)
}

fn run_transit(p: &TransitParams, seed: u64) -> Result<Artifacts, RunnerError> {
    let graph = p.graph.build()?;
    let label = p.graph.label();
    let n = graph.vertex_count();
    let mut rng = rng_from_seed(derive_seed(seed, SETUP_STREAM));
    let mut art = Artifacts::default();
    let record = match p.method {
        TransitMethodSpec::ClosedForm => closed_form_result(&graph)?.to_json(&label),
        TransitMethodSpec::MonteCarlo => {
            let dest = DestinationMap::random(n, &mut rng);
            let r = monte_carlo_p(&graph, &dest, p.samples, seed)?;
            art.metric("ci_half_width", r.ci_half_width.unwrap_or(f64::NAN));
            r.to_json(&label)
        }
        TransitMethodSpec::BruteForce => {
            let tagged: Vec<usize> = if p.all_tagged { (0..n).collect() } else { vec![0] };
            let mut evaluations = Vec::new();
            let mut first = None;
            for map in 0..p.maps {
                let dest = DestinationMap::random(n, &mut rng);
                for &t in &tagged {
                    let r = brute_force_result(&graph, &dest, t)?;
                    let exact = r.exact.clone().expect("brute force is exact");
                    evaluations.push(json!({
                        "map": map,
                        "destinations": dest.0,
                        "tagged": t,
                        "value_num": exact.numer().to_string(),
                        "value_den": exact.denom().to_string(),
                    }));
                    first.get_or_insert(r);
                }
            }
            let first = first.expect("at least one evaluation");
            let exact = first.exact.clone().expect("brute force is exact");
            let consistent = evaluations.iter().all(|e| {
                e["value_num"] == exact.numer().to_string() && e["value_den"] == exact.denom().to_string()
            });
            art.metric("consistent", if consistent { 1.0 } else { 0.0 });
            let mut record = first.to_json(&label);
            record["consistent"] = json!(consistent);
            record["evaluations"] = json!(evaluations);
            record
        }
    };
    if graph.is_regular() {
        let cf = closed_form_p(&graph)?;
        art.note(format!("closed form (|V|-(g+1))/|V| = {cf}"));
    }
    let value = record.get("value").or_else(|| record.get("estimate")).and_then(|v| v.as_f64());
    if let (Some(num), Some(den)) = (record.get("value_num"), record.get("value_den")) {
        art.note(format!("p = {}/{}", num.as_str().unwrap_or("?"), den.as_str().unwrap_or("?")));
    }
    art.metric("value", value.unwrap_or(f64::NAN));
    art.json("result.json", &record)?;
    Ok(art)
}

fn run_curve(p: &CurveParams) -> Result<Artifacts, RunnerError> {
    let points = lambda_of_eta(&uniform_eta_grid(p.grid), p.beta)?;
    let (eta_peak, lambda_plus) = curve_maximum(p.beta)?;
    let mut art = Artifacts::default();
    art.csv("curve.csv", &["eta", "lambda"], |w| {
        for (eta, lambda) in &points {
            w.write_record([eta.to_string(), lambda.to_string()])?;
        }
        Ok(())
    })?;
    let mut dat = String::from("# eta lambda\n");
    for (eta, lambda) in &points {
        let _ = writeln!(dat, "{eta} {lambda}");
    }
    art.files.push(("curve.dat".into(), dat.into_bytes()));
    art.json(
        "result.json",
        &json!({ "beta": p.beta, "grid": p.grid, "eta_peak": eta_peak, "lambda_plus": lambda_plus }),
    )?;
    art.metric("eta_peak", eta_peak);
    art.metric("lambda_plus", lambda_plus);
    Ok(art)
}

fn run_roots(p: &RootsParams) -> Result<Artifacts, RunnerError> {
    let roots = find_eta_roots(p.lambda, p.beta)?;
    let quad = nu_quadratic_roots(p.lambda, p.beta)?;
    let mut art = Artifacts::default();
    art.metric("lambda_plus", roots.lambda_plus);
    art.metric("eta_peak", roots.eta_peak);
    let mut record = json!({ "roots": roots, "nu_quadratic": quad });
    match roots.roots {
        Some((lo, hi)) => {
            let (nu_minus, nu_plus) = (lo - p.lambda, hi - p.lambda);
            art.metric("eta_minus", lo);
            art.metric("eta_plus", hi);
            art.metric("nu_minus", nu_minus);
            art.metric("nu_plus", nu_plus);
            art.metric("max_abs_error", roots.max_abs_error);
            record["nu"] = json!({ "minus": nu_minus, "plus": nu_plus });
            if let Some((qm, qp)) = quad.roots {
                let rel = ((nu_minus - qm).abs() / qm, (nu_plus - qp).abs() / qp);
                art.metric("quadratic_rel_error_minus", rel.0);
                art.metric("quadratic_rel_error_plus", rel.1);
                record["quadratic_relative_error"] = json!({ "minus": rel.0, "plus": rel.1 });
            }
        }
        None => art.note(format!("lambda = {} is at or above lambda_plus: no equilibria", p.lambda)),
    }
    art.json("result.json", &record)?;
    Ok(art)
}

fn run_absorption(p: &AbsorptionParams, seed: u64) -> Result<Artifacts, RunnerError> {
    let model = absorption_times(p.beta, p.gamma, p.n_max)?;
    let n_max = model.t.len() - 1;
    let mc_max = p.mc_max_start.min(n_max);
    let mut mc = Vec::new();
    if p.particles > 0 {
        for n in 0..=mc_max {
            mc.push(monte_carlo_absorption(p.beta, p.gamma, n, p.particles, derive_seed(seed, n as u64))?);
        }
    }
    let closed: Vec<f64> = (0..=n_max).map(|n| absorption_time_closed_form(p.beta, p.gamma, n)).collect();
    let max_abs_diff = model.t.iter().zip(&closed).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let visits = expected_visits(p.beta, p.gamma)?;

    let mut art = Artifacts::default();
    art.csv("absorption.csv", &["n", "t_solve", "t_closed_form", "abs_diff", "mc_mean", "mc_se"], |w| {
        for n in 0..=n_max {
            let (m, se) = mc.get(n).map_or((String::new(), String::new()), |s| {
                (s.time.mean.to_string(), s.time.se.to_string())
            });
            let row = [
                n.to_string(),
                model.t[n].to_string(),
                closed[n].to_string(),
                (model.t[n] - closed[n]).abs().to_string(),
                m,
                se,
            ];
            w.write_record(row)?;
        }
        Ok(())
    })?;
    art.json(
        "result.json",
        &json!({
            "beta": p.beta,
            "gamma": p.gamma,
            "expected_visits": visits,
            "expected_visits_solve": model.expected_visits,
            "max_abs_diff": max_abs_diff,
            "monte_carlo": mc.iter().enumerate().map(|(n, s)| json!({"start": n, "time": s.time, "visits": s.visits})).collect::<Vec<_>>(),
        }),
    )?;
    art.metric("expected_visits", visits);
    art.metric("max_abs_diff", max_abs_diff);
    if let Some(s) = mc.first() {
        art.metric("mc_visits", s.visits.mean);
        art.metric("mc_visits_se", s.visits.se);
    }
    Ok(art)
}

fn low_root(lambda: f64, beta: f64, field: &str) -> Result<(f64, f64), RunnerError> {
    let roots = find_eta_roots(lambda, beta)?;
    match roots.roots {
        Some((lo, _)) => Ok((lo, roots.lambda_plus)),
        None => Err(RunnerError::invalid(
            field,
            format!(
                "lambda = {lambda} is at or above lambda_plus = {}; no low-load equilibrium to default from",
                roots.lambda_plus
            ),
        )),
    }
}

fn run_lifetime(p: &LifetimeParams, seed: u64) -> Result<Artifacts, RunnerError> {
    let graph = p.graph.build()?;
    let degree = graph.degree();
    let (threshold, eta_minus, lambda_plus) = match p.threshold {
        Some(t) => (t, None, None),
        None => {
            let (lo, plus) = low_root(p.lambda, p.beta, "params.threshold")?;
            (default_threshold(lo), Some(lo), Some(plus))
        }
    };
    let cfg = sim_config(graph, p.lambda, p.beta, p.replicas, seed).with_horizon(Horizon::Time(p.horizon));
    let est = metastable_lifetime(&cfg, threshold, p.runs, p.start)?;
    let mut art = Artifacts::default();
    art.csv("lifetimes.csv", &["run", "hitting_time", "censored"], |w| {
        for r in &est.runs {
            w.write_record([r.run.to_string(), r.hitting_time.to_string(), r.censored.to_string()])?;
        }
        Ok(())
    })?;
    art.json(
        "result.json",
        &json!({
            "graph": p.graph.label(),
            "critical_size": critical_size(p.lambda, degree)?,
            "eta_minus": eta_minus,
            "lambda_plus": lambda_plus,
            "estimate": est,
        }),
    )?;
    art.metric("threshold", threshold as f64);
    art.metric("median", est.median);
    art.metric("lower_quartile", est.lower_quartile);
    art.metric("upper_quartile", est.upper_quartile);
    art.metric("censored", est.censored as f64);
    Ok(art)
}

fn run_compare(p: &CompareParams, seed: u64) -> Result<Artifacts, RunnerError> {
    let eta = match p.eta {
        Some(e) => e,
        None => low_root(p.lambda, p.beta, "params.eta")?.0,
    };
    let profile = rates_from_eta(eta, p.beta)?;
    let cfg = sim_config(p.graph.build()?, p.lambda, p.beta, p.replicas, seed).with_horizon(Horizon::Time(p.t1));
    let report = equilibrium_comparison(&cfg, &profile, (p.t0, p.t1), p.spacing)?;
    let mut art = Artifacts::default();
    art.csv("transit_rates.csv", &["k", "empirical", "nu"], |w| {
        for c in &report.transit_rates {
            w.write_record([c.k.to_string(), c.empirical.to_string(), c.nu.to_string()])?;
        }
        Ok(())
    })?;
    art.json("result.json", &json!({ "eta": eta, "profile_lambda": profile.lambda, "report": report }))?;
    art.metric("eta", eta);
    art.metric("mean_queue", report.mean_queue);
    art.metric("equilibrium_mean_queue", report.equilibrium_mean_queue);
    art.metric("queue_length_p_value", report.queue_length.p_value);
    art.metric("max_rate_discrepancy", report.max_rate_discrepancy);
    art.metric("diverged", if report.diverged { 1.0 } else { 0.0 });
    Ok(art)
}

fn run_drift(p: &DriftParams, seed: u64) -> Result<Artifacts, RunnerError> {
    let graph = p.graph.build()?;
    // Regular graphs: deep queues move by lambda + p - 1 per unit of time.
    let predicted = match graph.is_regular() {
        true => Some(p.lambda + closed_form_result(&graph)?.value - 1.0),
        false => None,
    };
    let critical = (p.lambda > 0.0).then(|| critical_size(p.lambda, graph.degree())).transpose()?;
    let cfg = sim_config(graph, p.lambda, p.beta, p.replicas, seed);
    let est = estimate_drift(&cfg, DriftOptions::new(p.blocks))?;
    let mut art = Artifacts::default();
    art.json(
        "result.json",
        &json!({
            "graph": p.graph.label(),
            "predicted_drift": predicted,
            "critical_size": critical,
            "estimate": est,
        }),
    )?;
    art.metric("drift", est.per_time.mean);
    art.metric("half_width", est.half_width);
    if let Some(d) = predicted {
        art.metric("predicted_drift", d);
    }
    Ok(art)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transit_brute_force_on_c5() {
        let spec = ExperimentSpec::new(Experiment::Transit(TransitParams {
            graph: GraphSpec::Cycle { k: 5 },
            method: TransitMethodSpec::BruteForce,
            maps: 3,
            all_tagged: true,
            ..Default::default()
        }));
        let art = execute(&spec).unwrap();
        assert_eq!(art.summary["consistent"], 1.0);
        assert!((art.summary["value"] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn curve_has_one_row_per_grid_point() {
        let spec = ExperimentSpec::new(Experiment::NlmpCurve(CurveParams { beta: 1.0, grid: 9 }));
        let art = execute(&spec).unwrap();
        let csv = std::str::from_utf8(&art.files[0].1).unwrap();
        assert_eq!(csv.lines().count(), 10);
        assert!(csv.starts_with("eta,lambda\n"));
    }

    #[test]
    fn lifetime_default_needs_equilibrium() {
        let spec = ExperimentSpec::new(Experiment::Lifetime(LifetimeParams { lambda: 0.9, ..Default::default() }));
        assert!(matches!(execute(&spec), Err(RunnerError::Invalid(_))));
    }
}
