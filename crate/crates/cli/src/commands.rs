use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Parser;
use num_rational::BigRational;
use serde_json::{json, Map, Value};

use erw_core::asymptotics::{berry_esseen_shape, predict_rate, variance_asymptote, variance_sum_series};
use erw_core::deviations::{even_deviations, odd_deviations, DeviationSeries};
use erw_core::grid::geometric_grid;
use erw_core::moments::exact_moments;
use erw_core::rates::{crossover_scan, ScanConfig, SCAN_CSV_HEADER};
use erw_core::sim::{first_return_times, simulate, summary_csv_header, terminal_dump_bytes, Dynamics, SimConfig};
use erw_core::ErwParams;

use crate::output::{read_manifest, write_manifest, write_output, Cell, Format, RunManifest, Table};
use crate::parse::{parse_counts, parse_list, parse_orders, parse_rational, render_rational, RationalArg};
use crate::{
    BoundArgs, Cli, Command, DeviationArgs, DynamicsArg, ExactArgs, FirstReturnArgs, ModelArgs, RateArgs, SimulateArgs,
    UsageError,
};

/// Below this `n_max`, fitted exponents carry visible finite-size bias.
const RELIABLE_N_MAX: u64 = 10_000;

struct Run {
    table: Table,
    parameters: Map<String, Value>,
    seed: Option<u64>,
    warnings: Vec<String>,
    extra_outputs: Vec<(PathBuf, Vec<u8>)>,
}

impl Run {
    fn new(table: Table) -> Self {
        Self { table, parameters: Map::new(), seed: None, warnings: Vec::new(), extra_outputs: Vec::new() }
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn checked<T>(r: std::result::Result<T, String>) -> Result<T> {
    r.map_err(usage)
}

/// Drops `--threads` and `--out` so the recorded arguments describe the computation only.
fn reproducible_argv(raw: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(raw.len());
    let mut skip = false;
    for a in raw {
        if skip {
            skip = false;
            continue;
        }
        if a == "--threads" || a == "--out" {
            skip = true;
            continue;
        }
        if a.starts_with("--threads=") || a.starts_with("--out=") {
            continue;
        }
        out.push(a.clone());
    }
    out
}

pub fn dispatch(cli: Cli, raw: &[String]) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            bail!(usage("--threads must be at least 1"));
        }
        // a pool may already exist when called twice in one process; the count is advisory
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match cli.command {
        Command::Replay(args) => {
            let manifest = read_manifest(&args.manifest)?;
            let inner = Cli::try_parse_from(std::iter::once("erw".to_string()).chain(manifest.argv.iter().cloned()))
                .map_err(|e| usage(format!("manifest arguments do not parse: {e}")))?;
            if matches!(inner.command, Command::Replay(_)) {
                bail!(usage("a manifest cannot record a replay"));
            }
            let out = cli.out.or_else(|| manifest.outputs.first().cloned());
            execute(inner.command, inner.format, out, manifest.argv)
        }
        command => execute(command, cli.format, cli.out, reproducible_argv(raw)),
    }
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::Exact(_) => "exact",
        Command::Deviations(_) => "deviations",
        Command::Rates(_) => "rates",
        Command::Simulate(_) => "simulate",
        Command::Bounds(_) => "bounds",
        Command::FirstReturn(_) => "first-return",
        Command::Replay(_) => "replay",
    }
}

fn execute(command: Command, format: Format, out: Option<PathBuf>, argv: Vec<String>) -> Result<()> {
    let name = subcommand_name(&command);
    let run = match command {
        Command::Exact(a) => exact(a)?,
        Command::Deviations(a) => deviations(a)?,
        Command::Rates(a) => rates(a)?,
        Command::Simulate(a) => simulate_cmd(a)?,
        Command::Bounds(a) => bounds(a)?,
        Command::FirstReturn(a) => first_return(a)?,
        Command::Replay(_) => unreachable!("handled by dispatch"),
    };
    for w in &run.warnings {
        eprintln!("warning: {w}");
    }
    let body = run.table.render(format);
    let out = out.unwrap_or_else(|| PathBuf::from(format!("erw-{name}.{}", format.extension())));
    for (path, bytes) in &run.extra_outputs {
        write_output(path, bytes)?;
    }
    if out.as_os_str() == "-" {
        print!("{body}");
        return Ok(());
    }
    write_output(&out, body.as_bytes())?;
    let mut outputs = vec![out.clone()];
    outputs.extend(run.extra_outputs.iter().map(|(p, _)| p.clone()));
    let manifest = RunManifest {
        tool: "erw".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: name.into(),
        argv,
        parameters: run.parameters,
        seed: run.seed,
        outputs,
        warnings: run.warnings,
    };
    write_manifest(&out, &manifest)?;
    Ok(())
}

fn take_warning(arg: &RationalArg, flag: &str, warnings: &mut Vec<String>) -> BigRational {
    if let Some(w) = &arg.warning {
        warnings.push(format!("--{flag}: {w}"));
    }
    arg.value.clone()
}

impl ModelArgs {
    fn params(&self, run: &mut Run) -> Result<ErwParams> {
        let alpha = take_warning(&self.alpha, "alpha", &mut run.warnings);
        let beta = take_warning(&self.beta, "beta", &mut run.warnings);
        let p = ErwParams::new(alpha, beta)?;
        run.parameters.insert("alpha".into(), json!(render_rational(p.alpha())));
        run.parameters.insert("beta".into(), json!(render_rational(p.beta())));
        run.parameters.insert("regime".into(), json!(p.regime().to_string()));
        Ok(p)
    }
}

fn orders_checked(text: &str) -> Result<Vec<u32>> {
    let orders = checked(parse_orders(text))?;
    if orders.is_empty() || orders.iter().any(|&k| k == 0 || k > 24) {
        bail!(usage("orders must be a nonempty list of integers in 1..=24"));
    }
    Ok(orders)
}

fn exact(a: ExactArgs) -> Result<Run> {
    let mut run = Run::new(Table::new(&["n", "order", "value", "float"]));
    let params = a.model.params(&mut run)?;
    let orders = orders_checked(&a.orders)?;
    if a.n == 0 {
        bail!(usage("--n must be at least 1"));
    }
    let max = *orders.iter().max().expect("nonempty");
    let mv = exact_moments(&params, a.n, max, a.bit_cap)?;
    for &k in &orders {
        run.table.push(vec![a.n.into(), k.into(), render_rational(&mv.value(k)).into(), mv.value_f64(k).into()]);
    }
    run.parameters.insert("n".into(), json!(a.n));
    run.parameters.insert("orders".into(), json!(orders));
    run.parameters.insert("bit_cap".into(), json!(a.bit_cap));
    Ok(run)
}

fn series_for_orders(params: &ErwParams, orders: &[u32], grid: &[u64]) -> Result<Vec<DeviationSeries>> {
    let mut all = Vec::new();
    if let Some(m) = orders.iter().filter(|k| *k % 2 == 0).max() {
        all.extend(even_deviations(params, m / 2, grid)?);
    }
    if let Some(m) = orders.iter().filter(|k| *k % 2 == 1).max() {
        all.extend(odd_deviations(params, m.div_ceil(2), grid)?);
    }
    Ok(orders.iter().map(|k| all.iter().find(|s| s.order == *k).expect("computed").clone()).collect())
}

fn deviations(a: DeviationArgs) -> Result<Run> {
    let cols: Vec<&str> = DeviationSeries::CSV_HEADER.split(',').collect();
    let mut run = Run::new(Table::new(&cols));
    let params = a.model.params(&mut run)?;
    let orders = orders_checked(&a.orders)?;
    let n_min = if params.is_critical() { a.n_min.max(2) } else { a.n_min.max(1) };
    if n_min > a.n_max {
        bail!(usage(format!("--n-min ({n_min}) exceeds --n-max ({})", a.n_max)));
    }
    let grid = geometric_grid(n_min, a.n_max, a.per_decade)?;
    for s in series_for_orders(&params, &orders, &grid)? {
        for (n, v) in s.points() {
            run.table.push(vec![n.into(), s.order.into(), v.into(), s.normalization.as_str().into()]);
        }
    }
    run.parameters.insert("orders".into(), json!(orders));
    run.parameters.insert("n_min".into(), json!(n_min));
    run.parameters.insert("n_max".into(), json!(a.n_max));
    run.parameters.insert("per_decade".into(), json!(a.per_decade));
    Ok(run)
}

fn rates(a: RateArgs) -> Result<Run> {
    let mut run = Run::new(Table::default());
    let mut cfg = ScanConfig::default();
    if let Some(text) = &a.alpha_grid {
        let parsed = checked(parse_list(text, parse_rational))?;
        if parsed.is_empty() {
            bail!(usage("--alpha-grid is empty"));
        }
        cfg.alpha_grid = parsed.iter().map(|r| take_warning(r, "alpha-grid", &mut run.warnings)).collect();
    }
    cfg.orders = orders_checked(&a.orders)?;
    cfg.n_max = a.n_max;
    cfg.beta = take_warning(&a.beta, "beta", &mut run.warnings);
    if let Some(w) = &a.window {
        let v = checked(parse_counts(w))?;
        if v.len() != 2 || v[0] >= v[1] {
            bail!(usage("--window takes lo,hi with lo < hi"));
        }
        cfg.window = Some((v[0], v[1]));
    }
    if a.n_max < RELIABLE_N_MAX {
        run.warnings.push(format!(
            "--n-max {} is below {RELIABLE_N_MAX}: fitted exponents carry larger finite-size bias, compare them with a wider tolerance",
            a.n_max
        ));
    }
    run.parameters.insert("alpha_grid".into(), json!(cfg.alpha_grid.iter().map(render_rational).collect::<Vec<_>>()));
    run.parameters.insert("orders".into(), json!(cfg.orders));
    run.parameters.insert("beta".into(), json!(render_rational(&cfg.beta)));
    run.parameters.insert("predictions_only".into(), json!(a.predictions_only));

    if a.predictions_only {
        run.table = Table::new(&["alpha", "order", "gamma_exponent", "coefficient", "decay_kind"]);
        for alpha in &cfg.alpha_grid {
            let p = ErwParams::new(alpha.clone(), cfg.beta.clone())?;
            for &k in &cfg.orders {
                let pred = predict_rate(&p, k)?;
                let (exp, kind): (Cell, &str) = if pred.identically_zero {
                    (Cell::Empty, "identically_zero")
                } else {
                    (pred.decay.exponent().into(), pred.decay.kind())
                };
                run.table.push(vec![pred.alpha.into(), k.into(), exp, pred.coefficient.into(), kind.into()]);
            }
        }
        return Ok(run);
    }

    let (lo, hi) = cfg.window();
    run.parameters.insert("n_max".into(), json!(cfg.n_max));
    run.parameters.insert("window".into(), json!([lo, hi]));
    let cols: Vec<&str> = SCAN_CSV_HEADER.split(',').collect();
    run.table = Table::new(&cols);
    for c in crossover_scan(&cfg)? {
        run.table.push(vec![
            c.alpha.into(),
            c.order.into(),
            c.gamma_hat.into(),
            c.gamma_predicted.into(),
            c.coefficient_hat.into(),
            c.coefficient_predicted.into(),
            c.flags.into(),
        ]);
    }
    Ok(run)
}

fn dynamics(d: DynamicsArg) -> Dynamics {
    match d {
        DynamicsArg::Conditional => Dynamics::ConditionalLaw,
        DynamicsArg::Replay => Dynamics::MemoryReplay,
    }
}

fn simulate_cmd(a: SimulateArgs) -> Result<Run> {
    let header = summary_csv_header();
    let cols: Vec<&str> = header.split(',').collect();
    let mut run = Run::new(Table::new(&cols));
    let params = a.model.params(&mut run)?;
    let mut cfg = SimConfig::new(params.clone(), a.n, a.replicas, a.seed).with_dynamics(dynamics(a.dynamics));
    if let Some(c) = &a.checkpoints {
        cfg.checkpoints = checked(parse_counts(c))?;
    }
    cfg.keep_terminal_samples = a.dump.is_some();
    cfg.replay_memory_cap = a.replay_cap;
    let times = cfg.recording_times()?;
    let stats = simulate(&cfg)?;
    for s in stats.summaries(&params) {
        let mut row: Vec<Cell> = vec![s.n.into(), s.count.into()];
        row.extend(s.moments.iter().map(|&m| Cell::from(m)));
        row.push(s.kolmogorov_distance.into());
        row.extend(s.standard_errors.iter().map(|&m| Cell::from(m)));
        run.table.push(row);
    }
    if let Some(path) = a.dump {
        let samples = stats.normalized_terminal_samples(&params).expect("samples kept");
        run.extra_outputs.push((path, terminal_dump_bytes(&samples)));
    }
    run.seed = Some(a.seed);
    run.parameters.insert("n".into(), json!(a.n));
    run.parameters.insert("replicas".into(), json!(a.replicas));
    run.parameters.insert("dynamics".into(), json!(cfg.dynamics.as_str()));
    run.parameters.insert("recording_times".into(), json!(times));
    run.parameters.insert("replay_cap".into(), json!(a.replay_cap));
    Ok(run)
}

fn bounds(a: BoundArgs) -> Result<Run> {
    let mut run =
        Run::new(Table::new(&["n", "berry_esseen_shape", "s2", "sigma2", "ratio_error", "variance_asymptote"]));
    let alpha = take_warning(&a.alpha, "alpha", &mut run.warnings);
    let params = ErwParams::new(alpha, BigRational::from_integer(0.into()))?;
    let n_min = a.n_min.max(3);
    if n_min > a.n_max {
        bail!(usage(format!("--n-min ({n_min}) exceeds --n-max ({})", a.n_max)));
    }
    let grid = geometric_grid(n_min, a.n_max, a.per_decade)?;
    for (n, s2, sigma2) in variance_sum_series(&params, &grid)? {
        run.table.push(vec![
            n.into(),
            berry_esseen_shape(&params, n)?.into(),
            s2.into(),
            sigma2.into(),
            ((s2 / sigma2).sqrt() - 1.0).abs().into(),
            variance_asymptote(&params, n).into(),
        ]);
    }
    run.parameters.insert("alpha".into(), json!(render_rational(params.alpha())));
    run.parameters.insert("n_min".into(), json!(n_min));
    run.parameters.insert("n_max".into(), json!(a.n_max));
    run.parameters.insert("per_decade".into(), json!(a.per_decade));
    Ok(run)
}

fn first_return(a: FirstReturnArgs) -> Result<Run> {
    let mut run = Run::new(Table::new(&["cutoff", "replicas", "censored_mean", "returned_fraction"]));
    let params = a.model.params(&mut run)?;
    let mut cutoffs = match &a.cutoffs {
        Some(c) => checked(parse_counts(c))?,
        None => [1_000, 10_000, 100_000].into_iter().filter(|&c| c < a.horizon).collect(),
    };
    cutoffs.push(a.horizon);
    cutoffs.sort_unstable();
    cutoffs.dedup();
    if let Some(&c) = cutoffs.iter().find(|&&c| c == 0 || c > a.horizon) {
        bail!(usage(format!("cutoff {c} must lie in [1, {}]", a.horizon)));
    }
    let cfg = SimConfig::new(params, a.horizon, a.replicas, a.seed).with_dynamics(dynamics(a.dynamics));
    let summary = first_return_times(&cfg)?;
    for &c in &cutoffs {
        run.table.push(vec![
            c.into(),
            a.replicas.into(),
            summary.censored_mean(c)?.into(),
            summary.returned_fraction(c).into(),
        ]);
    }
    run.seed = Some(a.seed);
    run.parameters.insert("horizon".into(), json!(a.horizon));
    run.parameters.insert("replicas".into(), json!(a.replicas));
    run.parameters.insert("cutoffs".into(), json!(cutoffs));
    run.parameters.insert("dynamics".into(), json!(cfg.dynamics.as_str()));
    Ok(run)
}
