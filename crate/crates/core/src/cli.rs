//! Command-line front end.
//!
//! Exit codes: 0 success, 1 a statistical check failed (or a run could not
//! finish), 2 usage or domain error, 3 a coin stream ran dry.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::basic::{von_neumann, VON_NEUMANN_MAX_FLIPS};
use crate::bounds::{
    lower_bound, optimize_params, simple_bound, sup_bound_for, theorem4_bound, BoundInputs,
};
use crate::coin::{CoinSource, CoinSpec, SimulatedCoin};
use crate::error::{Error, Result};
use crate::estimator::{estimate_many, estimate_p, EstimateRecord, EstimateSummary, DEFAULT_MAX_DRAWS};
use crate::factory::{make_params, replicate_seed, run_replicates, sample, FactoryParams, RunRecord, SampleSummary};
use crate::harness::{bench_figure1, instrument_stage1, verify_mean, write_bench_csv, BenchReport};
use crate::randomness::{RandomSeed, UniformSource};
use crate::stats::FlipStats;

const CONTRACT_NOTE: &str = "The linear factory is exact only when the coin satisfies C*p <= 1 - eps. \
The factory cannot check this; with a violating coin the output law is not guaranteed.";

#[derive(Debug, Parser)]
#[command(name = "bernoulli-factory", version, about = "Exact Bernoulli(Cp) sampling from a p-coin", long_about = None, after_help = CONTRACT_NOTE)]
pub struct Cli {
    /// Worker threads for replicate loops (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw Bernoulli(Cp) outputs and report flip counts.
    #[command(after_help = CONTRACT_NOTE)]
    Sample(SampleArgs),
    /// Evaluate running-time bounds.
    Bound(BoundArgs),
    /// Search (m, gamma) minimizing the supremum bound.
    Optimize(OptimizeArgs),
    /// Estimate p from factory outputs (stop at four ones).
    #[command(after_help = CONTRACT_NOTE)]
    Estimate(EstimateArgs),
    /// z-test the output mean against Cp with a simulated coin.
    #[command(after_help = CONTRACT_NOTE)]
    Verify(VerifyArgs),
    /// Instrument the first-stage walk against its exit and stopping-time bounds.
    Stage1(VerifyArgs),
    /// Reproduce the published flip-count table.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FactoryKind {
    /// The linear Cp factory.
    Linear,
    /// Von Neumann's fair bit.
    Vn,
}

#[derive(Debug, Args)]
pub struct FactoryArgs {
    /// Multiplier C > 1.
    #[arg(long = "C", value_name = "C")]
    pub c: f64,
    /// Slack eps in (0, 1); the coin must satisfy C*p <= 1 - eps.
    #[arg(long)]
    pub eps: f64,
    /// Stage shrink factor in (0, 1) [default: 0.5].
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Threshold scale; k = m / (gamma eps) [default: 2.3].
    #[arg(long)]
    pub m: Option<f64>,
}

impl FactoryArgs {
    fn params(&self) -> Result<FactoryParams> {
        make_params(self.c, self.eps, self.gamma, self.m)
    }
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long, value_enum, default_value_t = FactoryKind::Linear)]
    pub factory: FactoryKind,
    /// Multiplier C > 1 (linear factory only).
    #[arg(long = "C", value_name = "C")]
    pub c: Option<f64>,
    /// Slack eps in (0, 1) (linear factory only).
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub m: Option<f64>,
    /// sim:p=<real>, stream:<path> or stream:- for stdin.
    #[arg(long)]
    pub coin: CoinSpec,
    #[arg(long, default_value_t = 1)]
    pub n: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Flip cap per Von Neumann run.
    #[arg(long, default_value_t = VON_NEUMANN_MAX_FLIPS)]
    pub max_flips: u64,
    /// Disable the Von Neumann flip cap.
    #[arg(long)]
    pub no_guard: bool,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[command(flatten)]
    pub factory: FactoryArgs,
    /// Evaluate at this p instead of taking the supremum.
    #[arg(long, conflicts_with = "sup")]
    pub p: Option<f64>,
    /// Supremum over p in [0, (1 - eps)/C] (the default).
    #[arg(long)]
    pub sup: bool,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long = "C", value_name = "C")]
    pub c: f64,
    #[arg(long)]
    pub eps: f64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub factory: FactoryArgs,
    #[arg(long)]
    pub coin: CoinSpec,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of independent estimates.
    #[arg(long, default_value_t = 1)]
    pub n: u64,
    /// Factory calls allowed per estimate.
    #[arg(long, default_value_t = DEFAULT_MAX_DRAWS)]
    pub max_draws: u64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub factory: FactoryArgs,
    /// Must be a simulated coin, sim:p=<real>.
    #[arg(long)]
    pub coin: CoinSpec,
    #[arg(long, default_value_t = 100_000)]
    pub n: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 10_000)]
    pub n: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Write the full reports as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

/// Outcome of a subcommand that ran to completion.
enum Status {
    Ok,
    ChecksFailed,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InputExhausted { .. } => 3,
        Error::Domain(_)
        | Error::Infeasible { .. }
        | Error::StreamFormat { .. }
        | Error::Io(_)
        | Error::Csv(_)
        | Error::Json(_) => 2,
        Error::NonTermination { .. } | Error::Invariant(_) => 1,
    }
}

/// Parse `argv` (program name first), run, and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{rendered}")
            } else {
                write!(err, "{rendered}")
            };
            return code;
        }
    };
    let result = match cli.threads {
        Some(0) => Err(Error::domain("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::domain(e.to_string()))
            .and_then(|pool| {
                // Output handles need not be Send, so buffer inside the pool.
                let (mut obuf, mut ebuf) = (Vec::new(), Vec::new());
                let res = pool.install(|| dispatch(&cli.command, &mut obuf, &mut ebuf));
                out.write_all(&obuf)?;
                err.write_all(&ebuf)?;
                res
            }),
        None => dispatch(&cli.command, out, err),
    };
    match result {
        Ok(Status::Ok) => 0,
        Ok(Status::ChecksFailed) => 1,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: &Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<Status> {
    match cmd {
        Command::Sample(a) => cmd_sample(a, out, err),
        Command::Bound(a) => cmd_bound(a, out),
        Command::Optimize(a) => cmd_optimize(a, out),
        Command::Estimate(a) => cmd_estimate(a, out, err),
        Command::Verify(a) => cmd_verify(a, out, err),
        Command::Stage1(a) => cmd_stage1(a, out),
        Command::Bench(a) => cmd_bench(a, out),
    }
}

fn print_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn warn_params(params: &FactoryParams, err: &mut dyn Write) -> Result<()> {
    if let Some(w) = params.warning {
        writeln!(err, "warning: {w:?}; the running-time bound is infinite")?;
    }
    Ok(())
}

fn warn_contract(params: &FactoryParams, coin: &CoinSpec, err: &mut dyn Write) -> Result<()> {
    if let Some(p) = coin.known_p() {
        if params.c * p > 1.0 - params.eps + 1e-12 {
            writeln!(
                err,
                "warning: C*p = {} exceeds 1 - eps = {}; output law not guaranteed",
                params.c * p,
                1.0 - params.eps
            )?;
        }
    }
    Ok(())
}

fn bits(outputs: impl Iterator<Item = bool>) -> String {
    outputs.map(|b| if b { '1' } else { '0' }).collect()
}

fn cmd_sample(a: &SampleArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<Status> {
    if a.n == 0 {
        return Err(Error::domain("--n must be at least 1"));
    }
    let base = RandomSeed::new(a.seed, 0);
    match a.factory {
        FactoryKind::Linear => {
            let (c, eps) = match (a.c, a.eps) {
                (Some(c), Some(eps)) => (c, eps),
                _ => return Err(Error::domain("the linear factory needs --C and --eps")),
            };
            let params = make_params(c, eps, a.gamma, a.m)?;
            warn_params(&params, err)?;
            warn_contract(&params, &a.coin, err)?;
            let records: Vec<RunRecord> = match &a.coin {
                CoinSpec::Simulated { p } => {
                    run_replicates(&params, base, a.n, |s| SimulatedCoin::new(*p, s.coin_stream()))?
                }
                CoinSpec::Stream(input) => {
                    let mut coin = CoinSpec::open_stream(input)?;
                    (0..a.n)
                        .map(|r| {
                            let mut aux = UniformSource::new(replicate_seed(base, r));
                            sample(&params, &mut coin, &mut aux)
                        })
                        .collect::<Result<_>>()?
                }
            };
            let summary: SampleSummary = records.iter().collect();
            let outputs = bits(records.iter().map(|r| r.output));
            if a.json {
                print_json(
                    out,
                    &json!({
                        "factory": "linear",
                        "params": params,
                        "coin": a.coin.to_string(),
                        "n": a.n,
                        "seed": a.seed,
                        "outputs": outputs,
                        "ones": summary.ones,
                        "output_mean": summary.output_mean(),
                        "flips": summary.flips,
                        "max_stages": summary.max_stages,
                    }),
                )?;
            } else {
                writeln!(out, "{outputs}")?;
                write_summary(out, a.n, summary.ones, &summary.flips)?;
            }
        }
        FactoryKind::Vn => {
            let guard = (!a.no_guard).then_some(a.max_flips);
            let results: Vec<_> = match &a.coin {
                CoinSpec::Simulated { p } => {
                    use rayon::prelude::*;
                    (0..a.n)
                        .into_par_iter()
                        .map(|r| {
                            let mut coin = SimulatedCoin::new(*p, replicate_seed(base, r).coin_stream())?;
                            von_neumann(&mut coin, guard)
                        })
                        .collect::<Result<_>>()?
                }
                CoinSpec::Stream(input) => {
                    let mut coin = CoinSpec::open_stream(input)?;
                    (0..a.n)
                        .map(|_| von_neumann(&mut coin, guard))
                        .collect::<Result<_>>()?
                }
            };
            let flips: FlipStats = results.iter().map(|r| r.flips).collect();
            let ones = results.iter().filter(|r| r.bit).count() as u64;
            let outputs = bits(results.iter().map(|r| r.bit));
            if a.json {
                print_json(
                    out,
                    &json!({
                        "factory": "vn",
                        "params": null,
                        "coin": a.coin.to_string(),
                        "n": a.n,
                        "seed": a.seed,
                        "outputs": outputs,
                        "ones": ones,
                        "output_mean": ones as f64 / a.n as f64,
                        "flips": flips,
                        "max_stages": null,
                    }),
                )?;
            } else {
                writeln!(out, "{outputs}")?;
                write_summary(out, a.n, ones, &flips)?;
            }
        }
    }
    Ok(Status::Ok)
}

fn write_summary(out: &mut dyn Write, n: u64, ones: u64, flips: &FlipStats) -> Result<()> {
    writeln!(out, "n            {n}")?;
    writeln!(out, "ones         {ones}")?;
    writeln!(out, "output_mean  {}", ones as f64 / n as f64)?;
    writeln!(out, "flips_mean   {}", flips.mean())?;
    writeln!(out, "flips_sd     {}", flips.sd())?;
    writeln!(out, "flips_max    {}", flips.max())?;
    Ok(())
}

#[derive(Serialize)]
struct BoundOutput {
    c: f64,
    eps: f64,
    gamma: f64,
    m: f64,
    k: f64,
    r: f64,
    mode: &'static str,
    p: f64,
    bound: f64,
    simple_bound: f64,
    lower_bound: f64,
}

fn cmd_bound(a: &BoundArgs, out: &mut dyn Write) -> Result<Status> {
    let params = a.factory.params()?;
    let inputs = BoundInputs::from(&params);
    let (mode, p, bound) = match a.p {
        Some(p) => ("at_p", p, theorem4_bound(&inputs, p)?),
        None => {
            let s = sup_bound_for(&inputs)?;
            ("sup", s.p, s.value)
        }
    };
    let report = BoundOutput {
        c: params.c,
        eps: params.eps,
        gamma: params.gamma,
        m: params.m,
        k: params.k,
        r: params.r(),
        mode,
        p,
        bound,
        simple_bound: simple_bound(params.c, params.eps)?,
        lower_bound: lower_bound(params.c, params.eps)?,
    };
    if a.json {
        print_json(out, &report)?;
    } else {
        writeln!(out, "C            {}", report.c)?;
        writeln!(out, "eps          {}", report.eps)?;
        writeln!(out, "gamma        {}", report.gamma)?;
        writeln!(out, "m            {}", report.m)?;
        writeln!(out, "k            {:.6}", report.k)?;
        writeln!(out, "r            {:.6}", report.r)?;
        let label = if mode == "sup" { "sup_bound" } else { "bound" };
        writeln!(out, "{label:<12} {:.4}", report.bound)?;
        writeln!(out, "at_p         {}", report.p)?;
        writeln!(out, "simple_bound {:.4}", report.simple_bound)?;
        writeln!(out, "lower_bound  {:.6}", report.lower_bound)?;
    }
    Ok(Status::Ok)
}

fn cmd_optimize(a: &OptimizeArgs, out: &mut dyn Write) -> Result<Status> {
    let opt = optimize_params(a.c, a.eps)?;
    if a.json {
        print_json(
            out,
            &json!({
                "c": a.c,
                "eps": a.eps,
                "m_star": opt.m_star,
                "gamma_star": opt.gamma_star,
                "k_star": opt.k_star,
                "bound_value": opt.bound_value,
            }),
        )?;
    } else {
        writeln!(out, "C            {}", a.c)?;
        writeln!(out, "eps          {}", a.eps)?;
        writeln!(out, "m_star       {:.4}", opt.m_star)?;
        writeln!(out, "gamma_star   {:.4}", opt.gamma_star)?;
        writeln!(out, "k_star       {:.4}", opt.k_star)?;
        writeln!(out, "bound_value  {:.4}", opt.bound_value)?;
    }
    Ok(Status::Ok)
}

fn cmd_estimate(a: &EstimateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<Status> {
    if a.n == 0 {
        return Err(Error::domain("--n must be at least 1"));
    }
    let params = a.factory.params()?;
    warn_params(&params, err)?;
    warn_contract(&params, &a.coin, err)?;
    let base = RandomSeed::new(a.seed, 0);
    let guard = Some(a.max_draws);
    let records: Vec<EstimateRecord> = match &a.coin {
        CoinSpec::Simulated { p } => {
            estimate_many(&params, base, a.n, guard, |s| SimulatedCoin::new(*p, s.coin_stream()))?
        }
        CoinSpec::Stream(input) => {
            let mut coin: Box<dyn CoinSource> = CoinSpec::open_stream(input)?;
            (0..a.n)
                .map(|r| {
                    let mut aux = UniformSource::new(replicate_seed(base, r));
                    estimate_p(&params, &mut coin, &mut aux, guard)
                })
                .collect::<Result<_>>()?
        }
    };
    let known = a.coin.known_p().map(|p| (p, params.eps));
    let summary = EstimateSummary::new(&records, known);
    let status = match summary.coverage {
        Some(c) if c < 0.75 => Status::ChecksFailed,
        _ => Status::Ok,
    };
    if a.json {
        print_json(
            out,
            &json!({
                "params": params,
                "coin": a.coin.to_string(),
                "n": a.n,
                "seed": a.seed,
                "summary": summary,
                "estimates": records,
            }),
        )?;
    } else {
        if a.n == 1 {
            let r = &records[0];
            writeln!(out, "p_hat        {}", r.p_hat)?;
            writeln!(out, "draws        {}", r.draws)?;
            writeln!(out, "total_flips  {}", r.total_flips)?;
        } else {
            writeln!(out, "n            {}", summary.n)?;
            writeln!(out, "mean_p_hat   {}", summary.mean_p_hat)?;
            writeln!(out, "draws_mean   {}", summary.draws.mean())?;
            writeln!(out, "draws_sd     {}", summary.draws.sd())?;
            writeln!(out, "flips_mean   {}", summary.total_flips.mean())?;
        }
        if let Some(c) = summary.coverage {
            writeln!(out, "coverage     {c}")?;
        }
    }
    Ok(status)
}

fn simulated_p(coin: &CoinSpec) -> Result<f64> {
    coin.known_p()
        .ok_or_else(|| Error::domain("this subcommand needs a simulated coin (sim:p=<real>)"))
}

fn cmd_verify(a: &VerifyArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<Status> {
    let p = simulated_p(&a.coin)?;
    let params = a.factory.params()?;
    warn_params(&params, err)?;
    warn_contract(&params, &a.coin, err)?;
    let report = verify_mean(&params, p, a.n, a.seed)?;
    if a.json {
        print_json(out, &report)?;
    } else {
        writeln!(out, "target       {}", report.target)?;
        writeln!(out, "output_mean  {}", report.output_mean)?;
        writeln!(out, "halfwidth    {}", report.halfwidth)?;
        writeln!(out, "ones / n     {} / {}", report.ones, report.n)?;
        writeln!(out, "flips_mean   {}", report.flips.mean())?;
        writeln!(out, "result       {}", if report.pass { "PASS" } else { "FAIL" })?;
    }
    Ok(if report.pass { Status::Ok } else { Status::ChecksFailed })
}

fn cmd_stage1(a: &VerifyArgs, out: &mut dyn Write) -> Result<Status> {
    let p = simulated_p(&a.coin)?;
    let params = a.factory.params()?;
    let report = instrument_stage1(&params, p, a.n, a.seed)?;
    if a.json {
        print_json(out, &report)?;
    } else {
        writeln!(out, "p_k_hat      {} (bound {})", report.p_k_hat, report.p_k_bound)?;
        writeln!(out, "tau_mean     {} (bound {})", report.tau.mean(), report.tau_bound)?;
        writeln!(out, "result       {}", if report.pass() { "PASS" } else { "FAIL" })?;
    }
    Ok(if report.pass() { Status::Ok } else { Status::ChecksFailed })
}

fn cmd_bench(a: &BenchArgs, out: &mut dyn Write) -> Result<Status> {
    if a.n == 0 {
        return Err(Error::domain("--n must be at least 1"));
    }
    let reports = bench_figure1(a.n, a.seed)?;
    if let Some(path) = &a.csv {
        write_bench_csv(&reports, BufWriter::new(File::create(path)?))?;
    }
    if let Some(path) = &a.json {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, &reports)?;
        writeln!(w)?;
        w.flush()?;
    }
    write_bench_table(&reports, out)?;
    let ok = reports.iter().all(|r| r.pass_mean_test && r.pass_bound_test);
    Ok(if ok { Status::Ok } else { Status::ChecksFailed })
}

fn write_bench_table(reports: &[BenchReport], out: &mut dyn Write) -> Result<()> {
    writeln!(out, "p = (1 - eps)/C (worst case), eps = {}", reports.first().map_or(0.0, |r| r.eps))?;
    writeln!(
        out,
        "{:>4}  {:>14}  {:>9}  {:>16}  {:>16}  {:>14}  {:>5}",
        "C", "(m, gamma)", "theory", "empirical", "published", "Thomas-Blanchet", "pass"
    )?;
    for r in reports {
        let published = r
            .published
            .map(|p| format!("({}, {})", p.exp_mean, p.exp_sd))
            .unwrap_or_default();
        let tb = r
            .published
            .map(|p| format!("({}, {})", p.tb_mean, p.tb_sd))
            .unwrap_or_default();
        writeln!(
            out,
            "{:>4}  {:>14}  {:>9.2}  {:>16}  {:>16}  {:>14}  {:>5}",
            r.c,
            format!("({}, {})", r.m, r.gamma),
            r.theory_sup_bound,
            format!("({:.1}, {:.1})", r.empirical.mean(), r.empirical.sd()),
            published,
            tb,
            if r.pass_mean_test && r.pass_bound_test { "yes" } else { "NO" },
        )?;
    }
    Ok(())
}
