use std::fs;
use std::path::{Path, PathBuf};

use obspart::estimator::{kalman_score, KfConfig};
use obspart::graphkit::{modularity, spectral_partition, InteractionGraph};
use obspart::maximize::SolveTrace;
use obspart::measures::{evaluate, GramianSetFunction, Metric, MetricKind, SetFunction};
use obspart::oracle::{brute_partition, brute_placement, check_submodular_monotone};
use obspart::partition::{
    build_p2_objective, evaluate_partition, solve_partition, Partition, PartitionFile,
};
use obspart::placement::{bound_check, budgets_from_total, solve_placement, SensorConfig};
use obspart::sysmodel::{
    contribution_gramians, contribution_gramians_infinite, load_system, ContributionGramians,
    Horizon, LtiSystem,
};
use obspart::{Error, Result};

use crate::args::*;
use crate::report::*;

/// Convergence tolerance for infinite-horizon Gramians.
const LYAPUNOV_TOL: f64 = 1e-12;

/// A finished command: its report and, optionally, a CSV series.
pub struct Outcome {
    pub report: RunReport,
    pub csv: Option<Csv>,
}

pub struct Csv {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

fn report(command: &str, config: ResolvedConfig, seed: Option<u64>, output: Output) -> RunReport {
    RunReport {
        tool: TOOL.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        config,
        seed,
        output,
        timing: None,
    }
}

fn path_string(p: &Path) -> String {
    p.display().to_string()
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path_string(path),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path_string(path),
        source,
    })
}

fn gramians(sys: &LtiSystem, horizon: Horizon) -> Result<ContributionGramians> {
    match horizon {
        Horizon::Finite(n) => contribution_gramians(sys, n),
        Horizon::Infinite => contribution_gramians_infinite(sys, LYAPUNOV_TOL),
    }
}

fn load(args: &SystemArgs) -> Result<(LtiSystem, ContributionGramians)> {
    let sys = load_system(&args.system)?;
    let contribs = gramians(&sys, args.horizon)?;
    Ok((sys, contribs))
}

fn load_partition(path: Option<&PathBuf>, n: usize) -> Result<Partition> {
    match path {
        Some(p) => Partition::from_file(read_json::<PartitionFile>(p)?, n),
        None => Ok(Partition::whole(n)),
    }
}

fn labels_of(sys: &LtiSystem, states: &[usize]) -> Vec<String> {
    states.iter().map(|&v| sys.state_labels()[v].clone()).collect()
}

fn graph(sys: &LtiSystem) -> Result<Option<InteractionGraph>> {
    InteractionGraph::from_system(sys).transpose()
}

/// Modularity when the system has a graph with at least one edge.
fn optional_modularity(g: Option<&InteractionGraph>, p: &Partition) -> Result<Option<f64>> {
    match g {
        Some(g) if g.edges() > 0 => modularity(g, p).map(Some),
        _ => Ok(None),
    }
}

fn value(raw: f64, offset: f64) -> Value {
    Value {
        raw,
        shifted: raw - offset,
    }
}

fn trace_out(t: &SolveTrace) -> TraceOut {
    TraceOut {
        objective: t.objective.clone(),
        gains: t.gains.clone(),
        evaluations: t.evaluations.clone(),
    }
}

fn base_config(system: &SystemArgs, metric: Metric) -> ResolvedConfig {
    ResolvedConfig {
        system: Some(path_string(&system.system)),
        horizon: Some(system.horizon),
        metric: Some(metric),
        ..Default::default()
    }
}

fn solver_settings(args: &SolverArgs) -> SolverSettings {
    SolverSettings {
        solver: args.solver,
        config: args.config(),
    }
}

fn partition_output(
    sys: &LtiSystem,
    contribs: &ContributionGramians,
    partition: &Partition,
    metric: Metric,
    g: Option<&InteractionGraph>,
) -> Result<PartitionOut> {
    let offset = GramianSetFunction::new(contribs, metric).offset();
    let (values, _, raw_total) = evaluate_partition(contribs, partition, metric);
    let blocks = partition
        .blocks
        .iter()
        .zip(&values)
        .map(|(b, &v)| Block {
            states: b.clone(),
            labels: labels_of(sys, b),
            value: value(v + offset, offset),
        })
        .collect();
    Ok(PartitionOut {
        kappa: partition.kappa,
        provenance: partition.provenance,
        blocks,
        total: value(raw_total, partition.kappa as f64 * offset),
        modularity: optional_modularity(g, partition)?,
        completed_states: Vec::new(),
        evaluations: None,
        trace: None,
    })
}

pub fn sysinfo(args: &SysinfoArgs) -> Result<Outcome> {
    let sys = load_system(&args.system)?;
    let rho = sys.spectral_radius();
    let g = graph(&sys)?;
    let out = SysInfo {
        name: sys.name.clone(),
        n_x: sys.n_x(),
        n_y: sys.n_y(),
        state_labels: sys.state_labels().to_vec(),
        spectral_radius: rho,
        stable: rho < 1.0,
        graph_edges: g.map(|g| g.edges()),
    };
    let config = ResolvedConfig {
        system: Some(path_string(&args.system)),
        ..Default::default()
    };
    Ok(Outcome {
        report: report("sysinfo", config, None, Output::Sysinfo(out)),
        csv: None,
    })
}

pub fn gramian(args: &GramianArgs) -> Result<Outcome> {
    let metric = args.metric.metric()?;
    let (sys, contribs) = load(&args.system)?;
    let selection = match &args.select {
        Some(s) => s.clone(),
        None => (0..sys.n_y()).collect(),
    };
    let w = obspart::sysmodel::full_gramian(&contribs, &selection)?;
    let offset = GramianSetFunction::new(&contribs, metric).offset();
    let raw = obspart::measures::measure(&w, &metric)?;
    let out = GramianOut {
        labels: labels_of(&sys, &w.selection),
        metric: metric.kind,
        value: value(raw, offset),
        trace: evaluate(&w.w, &Metric::trace()),
        logdet: evaluate(&w.w, &Metric::logdet(metric.epsilon)),
        rank: evaluate(&w.w, &Metric::new(MetricKind::Rank, metric.epsilon, metric.rank_rel_tol)?) as usize,
        matrix: w.w.row_iter().map(|r| r.iter().copied().collect()).collect(),
        selection: w.selection,
    };
    let csv = Csv {
        header: (0..sys.n_x()).map(|j| format!("c{j}")).collect(),
        rows: out
            .matrix
            .iter()
            .map(|r| r.iter().map(|x| x.to_string()).collect())
            .collect(),
    };
    Ok(Outcome {
        report: report("gramian", base_config(&args.system, metric), None, Output::Gramian(out)),
        csv: Some(csv),
    })
}

pub fn partition(args: &PartitionArgs, exhaustive: bool) -> Result<Outcome> {
    let metric = args.metric.metric()?;
    let (sys, contribs) = load(&args.system)?;
    let g = graph(&sys)?;
    let mut config = base_config(&args.system, metric);
    config.kappa = Some(args.kappa);
    let (command, seed, out) = if exhaustive {
        let (p, _) = brute_partition(&contribs, args.kappa, metric)?;
        let out = partition_output(&sys, &contribs, &p, metric, g.as_ref())?;
        write_partition(args.partition_out.as_deref(), &p)?;
        ("oracle partition", None, out)
    } else {
        let cfg = args.solver.config();
        config.solver = Some(solver_settings(&args.solver));
        let (p, rep) = solve_partition(&contribs, args.kappa, metric, args.solver.solver, &cfg)?;
        let mut out = partition_output(&sys, &contribs, &p, metric, g.as_ref())?;
        out.completed_states = rep.completed_states;
        out.evaluations = Some(rep.evaluations);
        out.trace = Some(trace_out(&rep.trace));
        write_partition(args.partition_out.as_deref(), &p)?;
        ("partition", Some(cfg.seed), out)
    };
    let csv = partition_csv(&out);
    Ok(Outcome {
        report: report(command, config, seed, Output::Partition(out)),
        csv: Some(csv),
    })
}

fn write_partition(path: Option<&Path>, p: &Partition) -> Result<()> {
    if let Some(path) = path {
        let text = serde_json::to_string_pretty(&p.to_file())? + "\n";
        write_file(path, &text)?;
    }
    Ok(())
}

fn partition_csv(out: &PartitionOut) -> Csv {
    Csv {
        header: vec!["block".into(), "size".into(), "raw".into(), "shifted".into()],
        rows: out
            .blocks
            .iter()
            .enumerate()
            .map(|(i, b)| {
                vec![
                    i.to_string(),
                    b.states.len().to_string(),
                    b.value.raw.to_string(),
                    b.value.shifted.to_string(),
                ]
            })
            .collect(),
    }
}

fn resolve_budgets(args: &PlaceArgs, partition: &Partition) -> Result<Vec<usize>> {
    match (&args.budgets, args.sensors) {
        (Some(b), _) => Ok(b.clone()),
        (None, Some(r)) => budgets_from_total(partition, r),
        (None, None) => Err(Error::Infeasible("either --sensors or --budgets is required".into())),
    }
}

pub fn place(args: &PlaceArgs, exhaustive: bool) -> Result<Outcome> {
    let metric = args.metric.metric()?;
    let (sys, contribs) = load(&args.system)?;
    let partition = load_partition(args.partition.as_ref(), sys.n_y())?;
    let budgets = resolve_budgets(args, &partition)?;
    let mut config = base_config(&args.system, metric);
    config.partition = args.partition.as_deref().map(path_string);
    config.sensors = args.sensors;
    config.budgets = Some(budgets.clone());
    config.mode = Some(args.mode);

    let (command, seed, sc, trace): (_, _, SensorConfig, _) = if exhaustive {
        let (sc, _) = brute_placement(&contribs, &partition, &budgets, args.mode, metric)?;
        ("oracle place", None, sc, None)
    } else {
        let cfg = args.solver.config();
        config.solver = Some(solver_settings(&args.solver));
        let (sc, trace) = solve_placement(
            &contribs,
            &partition,
            &budgets,
            args.mode,
            metric,
            args.solver.solver,
            &cfg,
        )?;
        ("place", Some(cfg.seed), sc, Some(trace_out(&trace)))
    };

    let diag = bound_check(&contribs, &partition, &sc.selected, metric)?;
    let subsystems = partition
        .blocks
        .iter()
        .zip(&budgets)
        .map(|(b, &budget)| {
            let selected: Vec<usize> = sc.selected.iter().copied().filter(|v| b.contains(v)).collect();
            SubsystemSensors {
                budget,
                labels: labels_of(&sys, &selected),
                selected,
            }
        })
        .collect();
    let out = PlacementOut {
        mode: sc.mode,
        budgets: sc.budgets.clone(),
        labels: labels_of(&sys, &sc.selected),
        selected: sc.selected.clone(),
        subsystems,
        value: Value {
            raw: sc.raw_value,
            shifted: sc.value,
        },
        bound: Bound {
            metric: diag.metric,
            global: diag.global,
            local_sum: diag.local_sum,
            gap: diag.gap,
            holds: diag.holds,
        },
        trace,
    };
    let csv = Csv {
        header: vec!["state".into(), "label".into(), "subsystem".into()],
        rows: out
            .selected
            .iter()
            .zip(&out.labels)
            .map(|(&v, l)| {
                let block = partition.blocks.iter().position(|b| b.contains(&v)).unwrap_or(0);
                vec![v.to_string(), l.clone(), block.to_string()]
            })
            .collect(),
    };
    Ok(Outcome {
        report: report(command, config, seed, Output::Placement(out)),
        csv: Some(csv),
    })
}

pub fn baseline_spectral(args: &SpectralArgs) -> Result<Outcome> {
    let metric = args.metric.metric()?;
    let (sys, contribs) = load(&args.system)?;
    let g = graph(&sys)?.ok_or_else(|| {
        Error::invalid("system", "the system file defines neither `adjacency` nor `reactions`")
    })?;
    let p = spectral_partition(&g, args.kappa, args.seed)?;
    write_partition(args.partition_out.as_deref(), &p)?;
    let out = partition_output(&sys, &contribs, &p, metric, Some(&g))?;
    let mut config = base_config(&args.system, metric);
    config.kappa = Some(args.kappa);
    let csv = partition_csv(&out);
    Ok(Outcome {
        report: report("baseline-spectral", config, Some(args.seed), Output::Partition(out)),
        csv: Some(csv),
    })
}

pub fn modularity_cmd(args: &ModularityArgs) -> Result<Outcome> {
    let sys = load_system(&args.system)?;
    let g = graph(&sys)?.ok_or_else(|| {
        Error::invalid("system", "the system file defines neither `adjacency` nor `reactions`")
    })?;
    let p = load_partition(args.partition.as_ref(), g.n())?;
    let q = modularity(&g, &p)?;
    let config = ResolvedConfig {
        system: Some(path_string(&args.system)),
        partition: args.partition.as_deref().map(path_string),
        ..Default::default()
    };
    let out = ModularityOut {
        blocks: p.blocks,
        edges: g.edges(),
        modularity: q,
    };
    Ok(Outcome {
        report: report("modularity", config, None, Output::Modularity(out)),
        csv: None,
    })
}

/// First `selected` list found in a JSON object, searched depth first.
fn find_selected(v: &serde_json::Value) -> Option<&serde_json::Value> {
    match v {
        serde_json::Value::Object(map) => map
            .get("selected")
            .or_else(|| map.values().find_map(find_selected)),
        _ => None,
    }
}

fn sensors_from_file(path: &Path) -> Result<Vec<usize>> {
    let doc: serde_json::Value = read_json(path)?;
    let list = if doc.is_array() { Some(&doc) } else { find_selected(&doc) };
    let list = list.ok_or_else(|| {
        Error::invalid("sensors-file", "no list of sensor indices found")
    })?;
    Ok(serde_json::from_value(list.clone())?)
}

pub fn verify_kf(args: &VerifyKfArgs) -> Result<Outcome> {
    let sys = load_system(&args.system)?;
    let sensors = match (&args.select, &args.sensors_file) {
        (Some(s), _) => s.clone(),
        (None, Some(p)) => sensors_from_file(p)?,
        (None, None) => return Err(Error::invalid("sensors", "no sensor set given")),
    };
    let cfg = KfConfig {
        process_noise: args.process_noise,
        measurement_noise: args.measurement_noise,
        initial_covariance: args.initial_covariance,
        trials: args.trials,
        horizon: args.horizon,
        seed: args.seed,
    };
    let score = kalman_score(&sys, &sensors, &cfg)?;
    let config = ResolvedConfig {
        system: Some(path_string(&args.system)),
        kalman: Some(cfg),
        ..Default::default()
    };
    let csv = Csv {
        header: vec!["trial".into(), "relative_error".into()],
        rows: score
            .per_trial
            .iter()
            .enumerate()
            .map(|(t, e)| vec![t.to_string(), e.to_string()])
            .collect(),
    };
    let out = KalmanOut {
        labels: labels_of(&sys, &score.sensors),
        sensors: score.sensors,
        mean_relative_error: score.mean,
        std_dev: score.std_dev,
        per_trial: score.per_trial,
    };
    Ok(Outcome {
        report: report("verify-kf", config, Some(args.seed), Output::Kalman(out)),
        csv: Some(csv),
    })
}

pub fn oracle_check(args: &CheckArgs) -> Result<Outcome> {
    let metric = args.metric.metric()?;
    let (_, contribs) = load(&args.system)?;
    let mut config = base_config(&args.system, metric);
    let (ground, rep) = match args.objective {
        CheckObjective::Plain => {
            config.objective = Some("plain".into());
            let f = GramianSetFunction::new(&contribs, metric);
            (f.ground_size(), check_submodular_monotone(&f, f.ground_size())?)
        }
        CheckObjective::Extended => {
            config.objective = Some("extended".into());
            config.kappa = Some(args.kappa);
            if args.kappa == 0 {
                return Err(Error::invalid("kappa", "must be at least 1"));
            }
            let f = build_p2_objective(&contribs, args.kappa, metric);
            (f.ground_size(), check_submodular_monotone(&f, f.ground_size())?)
        }
    };
    let out = CheckOut {
        ground_size: ground,
        triples_checked: rep.triples_checked,
        violations: rep.total,
        witnesses: rep.witnesses,
    };
    Ok(Outcome {
        report: report("oracle check", config, None, Output::Check(out)),
        csv: None,
    })
}

pub fn sweep(args: &SweepArgs) -> Result<Outcome> {
    if args.from == 0 || args.from > args.to {
        return Err(Error::invalid("from", "need 1 <= --from <= --to"));
    }
    let metric = args.metric.metric()?;
    let (sys, contribs) = load(&args.system)?;
    let g = graph(&sys)?;
    let cfg = args.solver.config();
    let offset = GramianSetFunction::new(&contribs, metric).offset();

    let place_value = |p: &Partition, r: usize| -> Result<Value> {
        let budgets = budgets_from_total(p, r)?;
        let (sc, _) = solve_placement(
            &contribs,
            p,
            &budgets,
            obspart::placement::ObjectiveMode::Global,
            metric,
            args.solver.solver,
            &cfg,
        )?;
        Ok(Value {
            raw: sc.raw_value,
            shifted: sc.value,
        })
    };

    let mut rows = Vec::new();
    for kappa in args.from..=args.to {
        let (p, rep) = solve_partition(&contribs, kappa, metric, args.solver.solver, &cfg)?;
        let spectral = match &g {
            Some(g) => Some(spectral_partition(g, kappa, cfg.seed)?),
            None => None,
        };
        let spectral_total = spectral.as_ref().map(|s| {
            let (_, _, raw) = evaluate_partition(&contribs, s, metric);
            value(raw, kappa as f64 * offset)
        });
        rows.push(SweepRow {
            kappa,
            solver_total: Value {
                raw: rep.raw_total,
                shifted: rep.total,
            },
            solver_modularity: optional_modularity(g.as_ref(), &p)?,
            spectral_total,
            spectral_modularity: match &spectral {
                Some(s) => optional_modularity(g.as_ref(), s)?,
                None => None,
            },
            solver_placement: args.sensors.map(|r| place_value(&p, r)).transpose()?,
            spectral_placement: match (&spectral, args.sensors) {
                (Some(s), Some(r)) => Some(place_value(s, r)?),
                _ => None,
            },
        });
    }

    let fmt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let csv = Csv {
        header: [
            "kappa",
            "solver_total",
            "solver_modularity",
            "spectral_total",
            "spectral_modularity",
            "solver_placement",
            "spectral_placement",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    r.kappa.to_string(),
                    r.solver_total.shifted.to_string(),
                    fmt(r.solver_modularity),
                    fmt(r.spectral_total.as_ref().map(|v| v.shifted)),
                    fmt(r.spectral_modularity),
                    fmt(r.solver_placement.as_ref().map(|v| v.shifted)),
                    fmt(r.spectral_placement.as_ref().map(|v| v.shifted)),
                ]
            })
            .collect(),
    };

    let mut config = base_config(&args.system, metric);
    config.solver = Some(solver_settings(&args.solver));
    config.sweep = Some(SweepRange {
        from: args.from,
        to: args.to,
    });
    config.sensors = args.sensors;
    Ok(Outcome {
        report: report("sweep-kappa", config, Some(cfg.seed), Output::Sweep(SweepOut { rows })),
        csv: Some(csv),
    })
}
