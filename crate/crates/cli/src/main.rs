//! Command-line driver: ingest workloads and datasets, run any pipeline,
//! and emit reproducible JSON reports plus plot-ready CSV traces. Reports
//! for identical `(config, seed)` pairs are bit-identical.

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use onlinegamma2::dp::{Dataset, PrivacyBudget, ReleaseMechanism};
use onlinegamma2::median::{self, SliceStream};
use onlinegamma2::oracles::{self, WorkloadFamily, WorkloadSpec};
use onlinegamma2::report::{render, ReportMeta};
use onlinegamma2::transforms::{
    AvgEngineFactory, DoublingColumn, DoublingRow, GrowingFactorization, RowArrivalFactorizer,
};
use onlinegamma2::vcnet::{self, NetStructure, VcNetConfig};
use onlinegamma2::walk::{default_walk_scale, DiscPipeline};
use onlinegamma2::{io, rng};
use serde_json::json;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "onlinegamma2", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Seed recorded in the report; drives all randomness.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; reports print to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for multi-seed sweeps.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Stream a row CSV through the composed online factorizer.
    Factorize {
        #[command(flatten)]
        common: CommonArgs,
        /// Row-stream CSV (one query row per line).
        #[arg(long)]
        input: PathBuf,
        /// Override for the first phase's γ guess (default ‖q₁‖_∞).
        #[arg(long)]
        gamma: Option<f64>,
        /// Doubling overhead exponent c.
        #[arg(long, default_value_t = 0.5)]
        cexp: f64,
    },
    /// Online private release of a workload against a dataset.
    Release {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        workload: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        eps: f64,
        #[arg(long, default_value_t = 1e-6)]
        delta: f64,
        /// Privacy off: answers are exact (plumbing validation).
        #[arg(long, default_value_t = false)]
        noiseless: bool,
        #[arg(long, default_value_t = 0.5)]
        cexp: f64,
        /// Number of seeds to sweep (reports per-seed max errors).
        #[arg(long, default_value_t = 1)]
        sweep: usize,
    },
    /// Online discrepancy minimization over a column stream.
    Disc {
        #[command(flatten)]
        common: CommonArgs,
        /// Column-stream CSV (one column per line, m entries each).
        #[arg(long)]
        input: PathBuf,
        /// Walk scale c; default 30·ln(4·N_coords·T).
        #[arg(long)]
        walk_c: Option<f64>,
        /// Include the brute-force optimum (needs at most 22 columns).
        #[arg(long, default_value_t = false)]
        brute: bool,
        /// Allowed walk restarts with fresh seeds.
        #[arg(long, default_value_t = 4)]
        max_restarts: usize,
    },
    /// Brute-force (modified) restricted hereditary discrepancy.
    Hdisc {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        input: PathBuf,
        /// Subset size cap w.
        #[arg(short, long)]
        w: usize,
        /// Append the all-ones row (hdisc*).
        #[arg(long, default_value_t = false)]
        modified: bool,
        /// Enumeration guard.
        #[arg(long, default_value_t = 10_000_000)]
        guard: u128,
    },
    /// The small-dataset competitive mechanism.
    Median {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        workload: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        eps: f64,
        #[arg(long, default_value_t = 1e-6)]
        delta: f64,
        #[arg(long, default_value_t = 0.05)]
        beta: f64,
        #[arg(long, default_value_t = false)]
        noiseless: bool,
    },
    /// Reproduce the unavoidable-loss experiment on our own pipeline.
    Lowerbound {
        #[command(flatten)]
        common: CommonArgs,
        /// Universe size (power of two, at most 64).
        #[arg(short, long)]
        n: usize,
        #[arg(long, default_value_t = 0.5)]
        cexp: f64,
    },
    /// Layered-net factorization of a Boolean row stream.
    Vcnet {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        input: PathBuf,
        /// Shatter exponent for the schedule (at least 2).
        #[arg(short, long, default_value_t = 2)]
        d: usize,
        /// Expected stream length m; defaults to the file's row count.
        #[arg(long)]
        expected_m: Option<usize>,
        /// Exponent claimed for the packing audit.
        #[arg(long)]
        audit_d: Option<usize>,
    },
    /// Offline γ₂ estimate (dual ascent lower bound + certified upper).
    Oracle {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 500)]
        iters: usize,
    },
    /// Generate a workload family to CSV.
    Workload {
        #[command(flatten)]
        common: CommonArgs,
        /// One of: hadamard, scaled-hadamard-lb, prefix-sums, intervals,
        /// halfplanes-grid, random-boolean.
        #[arg(long)]
        family: String,
        #[arg(short, long)]
        n: usize,
        /// Row count (0 = family default).
        #[arg(short, long, default_value_t = 0)]
        m: usize,
        #[arg(long)]
        output: PathBuf,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter("ONLINEGAMMA2_LOG")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = if err
                .downcast_ref::<onlinegamma2::Error>()
                .map_or(false, |e| matches!(e, onlinegamma2::Error::Parse { .. }))
            {
                2
            } else {
                1
            };
            std::process::exit(code);
        }
    }
}

fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

fn emit(common: &CommonArgs, name: &str, content: &str) -> Result<()> {
    match &common.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join(name);
            std::fs::write(&path, content)?;
            log::info!("wrote {}", path.display());
        }
        None => println!("{content}"),
    }
    Ok(())
}

fn avg_row_pipeline(n: usize, cexp: f64, gamma: Option<f64>) -> DoublingRow<AvgEngineFactory> {
    DoublingRow::new(n, cexp, gamma, |gamma| AvgEngineFactory { gamma })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Factorize { common, input, gamma, cexp } => {
            let rows = io::read_matrix_csv(&input)?;
            let meta = ReportMeta::new("factorize", common.seed)
                .with_config("input", input.display().to_string())
                .with_config("gamma", json!(gamma))
                .with_config("cexp", cexp)
                .with_input_hash("input", hash_file(&input)?);
            if rows.is_empty() {
                emit(&common, "factorize.json", &render(&meta, &json!({"steps": 0}))?)?;
                return Ok(());
            }
            let n = rows[0].len();
            let mut pipeline = avg_row_pipeline(n, cexp, gamma);
            let mut growing = GrowingFactorization::new(n, 1.0, f64::INFINITY);
            let mut trace = Vec::new();
            let mut prefix: Vec<Vec<f64>> = Vec::new();
            let mut warm: Option<Vec<f64>> = None;
            let mut max_ratio: f64 = 0.0;
            for (idx, q) in rows.iter().enumerate() {
                let step = pipeline.step(q)?;
                growing.set_left_norm_cap(pipeline.left_norm_cap());
                growing.push_step(&step, q)?;
                prefix.push(q.clone());
                let mut w = warm.take().unwrap_or_default();
                w.push(0.0);
                let (dual, weights) =
                    oracles::gammaf_dual_ascent(&prefix, 120, 1e-9, Some(&w));
                warm = Some(weights);
                let lower = dual / (n as f64).sqrt();
                let left_norm: f64 =
                    step.left.iter().map(|&(_, c)| c * c).sum::<f64>().sqrt();
                let ratio = if lower > 0.0 { left_norm / lower } else { f64::NAN };
                max_ratio = max_ratio.max(ratio);
                trace.push(vec![
                    (idx + 1) as f64,
                    left_norm,
                    growing.max_column_norm(),
                    lower,
                    ratio,
                ]);
            }
            if let Some(dir) = &common.out {
                std::fs::create_dir_all(dir)?;
                io::write_matrix_csv(&dir.join("factorize_trace.csv"), &trace)?;
            }
            let payload = json!({
                "steps": rows.len(),
                "maxRatio": max_ratio,
                "maxLeftNorm": growing.max_left_norm(),
                "maxColumnNorm": growing.max_column_norm(),
                "phases": pipeline.phase(),
                "rightRows": growing.right_rows.len(),
            });
            emit(&common, "factorize.json", &render(&meta, &payload)?)
        }

        Command::Release { common, workload, data, eps, delta, noiseless, cexp, sweep } => {
            let rows = io::read_matrix_csv(&workload)?;
            for (i, row) in rows.iter().enumerate() {
                if row.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                    return Err(onlinegamma2::Error::Parse {
                        line: i + 1,
                        msg: "workload entries must lie in [0,1]".into(),
                    }
                    .into());
                }
            }
            let records = io::read_dataset_csv(&data)?;
            let n_universe = rows.first().map_or(0, |r| r.len());
            let dataset = Dataset::new(n_universe, records)?;
            let budget = if noiseless {
                PrivacyBudget::noiseless(eps, delta)
            } else {
                PrivacyBudget::new(eps, delta, dataset.len())?
            };
            let meta = ReportMeta::new("release", common.seed)
                .with_config("eps", eps)
                .with_config("delta", delta)
                .with_config("n", dataset.len())
                .with_config("noiseless", noiseless)
                .with_config("cexp", cexp)
                .with_config("sweep", sweep)
                .with_input_hash("workload", hash_file(&workload)?)
                .with_input_hash("data", hash_file(&data)?);

            let run_one = |seed: u64| -> Result<serde_json::Value> {
                let pipeline = avg_row_pipeline(n_universe, cexp, None);
                let mut mech = ReleaseMechanism::new(pipeline, budget, dataset.clone(), seed)?;
                let mut per_step_error = Vec::with_capacity(rows.len());
                let mut value_bound = Vec::with_capacity(rows.len());
                for q in &rows {
                    let a = mech.answer(q)?;
                    let exact = dataset.query_answer(q);
                    per_step_error.push((a - exact).abs());
                    value_bound.push(mech.steps().last().unwrap().left_norm * budget.sigma);
                }
                if !mech.ledger_ok() || !mech.decomposition_check() {
                    anyhow::bail!("noise ledger or decomposition check failed");
                }
                let max_error = per_step_error.iter().cloned().fold(0.0, f64::max);
                Ok(json!({
                    "seed": seed,
                    "eps": eps,
                    "delta": delta,
                    "n": dataset.len(),
                    "perStepError": per_step_error,
                    "maxError": max_error,
                    "valueBound": value_bound,
                }))
            };
            let seeds: Vec<u64> = (0..sweep as u64).map(|i| common.seed + i).collect();
            let reports = run_sweep(&seeds, common.jobs, run_one)?;
            let payload = if reports.len() == 1 {
                reports.into_iter().next().unwrap()
            } else {
                json!({"runs": reports})
            };
            emit(&common, "release.json", &render(&meta, &payload)?)
        }

        Command::Disc { common, input, walk_c, brute, max_restarts } => {
            // The whole stream is read upfront: signs never influence the
            // columns, which is the oblivious-adversary contract.
            let cols = io::read_matrix_csv(&input)?;
            let meta = ReportMeta::new("disc", common.seed)
                .with_config("walk_c", json!(walk_c))
                .with_config("brute", brute)
                .with_input_hash("input", hash_file(&input)?);
            if cols.is_empty() {
                emit(&common, "disc.json", &render(&meta, &json!({"steps": 0}))?)?;
                return Ok(());
            }
            let m = cols[0].len();
            let t_len = cols.len();
            let c = walk_c.unwrap_or_else(|| default_walk_scale(m * t_len, t_len));
            let mut restarts = 0usize;
            let report = loop {
                let fact = DoublingColumn::new(m, None, |g| AvgEngineFactory { gamma: g });
                let mut pipe = DiscPipeline::new(fact, c);
                let mut rng = rng::seeded(common.seed + restarts as u64);
                let mut failed = false;
                for a in &cols {
                    match pipe.step(a, &mut rng) {
                        Ok(_) => {}
                        Err(onlinegamma2::Error::WalkFailed(_, _)) => {
                            failed = true;
                            break;
                        }
                        Err(e) => return Err(e.into()),
                    }
                }
                if !failed {
                    break pipe;
                }
                restarts += 1;
                if restarts > max_restarts {
                    anyhow::bail!("walk failed {restarts} times; raise --walk-c");
                }
            };
            let gamma_est = oracles::gamma_estimate(&transpose(&cols), 300);
            let brute_opt = if brute { Some(onlinegamma2::walk::brute_prefix_disc(&cols)?) } else { None };
            let payload = json!({
                "signs": report.run().signs,
                "maxPrefixInf": report.run().max_prefix_inf,
                "prefixInf": report.run().prefix_inf,
                "gammaEstimate": {"lower": gamma_est.lower, "upper": gamma_est.upper},
                "bruteOptimum": brute_opt,
                "restarts": restarts,
                "walkC": c,
                "phases": report.phase_count(),
            });
            emit(&common, "disc.json", &render(&meta, &payload)?)
        }

        Command::Hdisc { common, input, w, modified, guard } => {
            let rows = io::read_matrix_csv(&input)?;
            let value = median::hdisc_bruteforce_guarded(&rows, w, modified, guard)?;
            let meta = ReportMeta::new("hdisc", common.seed)
                .with_config("w", w)
                .with_config("modified", modified)
                .with_input_hash("input", hash_file(&input)?);
            emit(&common, "hdisc.json", &render(&meta, &json!({"value": value}))?)
        }

        Command::Median { common, workload, data, eps, delta, beta, noiseless } => {
            let rows = io::read_matrix_csv(&workload)?;
            let records = io::read_dataset_csv(&data)?;
            let n_universe = rows.first().map_or(0, |r| r.len());
            let dataset = Dataset::new(n_universe, records)?;
            let mut stream = SliceStream::new(&rows);
            let mut r = rng::seeded(common.seed);
            let run = median::outer_run(
                &dataset,
                eps,
                delta,
                rows.len(),
                beta,
                &mut stream,
                &mut r,
                noiseless,
            )?;
            let meta = ReportMeta::new("median", common.seed)
                .with_config("eps", eps)
                .with_config("delta", delta)
                .with_config("beta", beta)
                .with_config("noiseless", noiseless)
                .with_input_hash("workload", hash_file(&workload)?)
                .with_input_hash("data", hash_file(&data)?);
            let exact: Vec<f64> = run.queries.iter().map(|q| dataset.query_answer(q)).collect();
            let max_error = run
                .answers
                .iter()
                .zip(&exact)
                .map(|(a, e)| (a - e).abs())
                .fold(0.0, f64::max);
            let payload = json!({
                "sStar": run.s_star,
                "truncated": run.truncated,
                "answers": run.answers,
                "maxError": max_error,
                "innerLoopCounts": run.inner_runs.iter().map(|r| r.at_loops).collect::<Vec<_>>(),
                "halvingTrace": run.inner_runs.iter().map(|r| r.halving_trace.clone()).collect::<Vec<_>>(),
            });
            emit(&common, "median.json", &render(&meta, &payload)?)
        }

        Command::Lowerbound { common, n, cexp } => {
            let mut pipeline = avg_row_pipeline(n, cexp, None);
            let report = oracles::lowerbound_harness(&mut pipeline, n)?;
            let meta = ReportMeta::new("lowerbound", common.seed)
                .with_config("n", n)
                .with_config("cexp", cexp);
            let pass = report.max_ratio >= report.bound && report.columns_ok;
            let payload = json!({
                "n": n,
                "maxRatio": report.max_ratio,
                "bound": report.bound,
                "columnsOk": report.columns_ok,
                "maxColumnNorm": report.max_column_norm,
                "pass": pass,
                "ratios": report.steps.iter().map(|s| s.ratio).collect::<Vec<_>>(),
            });
            if !pass {
                log::warn!("lower-bound reproduction failed: not a valid online run?");
            }
            emit(&common, "lowerbound.json", &render(&meta, &payload)?)
        }

        Command::Vcnet { common, input, d, expected_m, audit_d } => {
            let rows = io::read_matrix_csv(&input)?;
            let m = expected_m.unwrap_or(rows.len().max(1));
            let n = rows.first().map_or(1, |r| r.len());
            let cfg = VcNetConfig::new(n, m, d)?;
            let bound_sum = cfg.schedule_sum((n as f64).log2().ceil() as usize);
            let mut net = NetStructure::new(cfg);
            let mut max_left_sq: f64 = 0.0;
            let mut reconstruction_ok = true;
            let all_rows: Vec<Vec<f64>> = Vec::new();
            let mut stored_rows = all_rows;
            for q in &rows {
                let ins = net.insert(q)?;
                for (_, r) in &ins.new_rows {
                    stored_rows.push(r.clone());
                }
                let mut rec = vec![0.0; n];
                let mut lsq = 0.0;
                for &(idx, c) in &ins.left {
                    lsq += c * c;
                    for (i, v) in stored_rows[idx].iter().enumerate() {
                        rec[i] += c * v;
                    }
                }
                max_left_sq = max_left_sq.max(lsq);
                if rec.iter().zip(q).any(|(a, b)| (a - b).abs() > 1e-9) {
                    reconstruction_ok = false;
                }
            }
            net.check_invariants()?;
            let audit = vcnet::packing_audit(&net, audit_d.unwrap_or(d), vcnet::AUDIT_CONSTANT);
            let meta = ReportMeta::new("vcnet", common.seed)
                .with_config("d", d)
                .with_config("expected_m", m)
                .with_input_hash("input", hash_file(&input)?);
            let payload = json!({
                "inserts": net.inserts(),
                "reconstructionOk": reconstruction_ok,
                "frobNormSq": net.frob_norm_sq(),
                "frobBound": n,
                "maxLeftNormSq": max_left_sq,
                "leftBound": net.config().norm_divisor * net.config().norm_divisor
                    * (m as f64).powf(1.0 - 1.0 / d as f64) * bound_sum,
                "layerSizes": net.layer_sizes(),
                "auditFlagged": audit.iter().filter(|l| l.flagged).map(|l| l.layer).collect::<Vec<_>>(),
            });
            emit(&common, "vcnet.json", &render(&meta, &payload)?)
        }

        Command::Oracle { common, input, iters } => {
            let rows = io::read_matrix_csv(&input)?;
            if rows.is_empty() {
                anyhow::bail!("empty matrix");
            }
            let est = oracles::gamma_estimate(&rows, iters);
            let meta = ReportMeta::new("oracle", common.seed)
                .with_config("iters", iters)
                .with_input_hash("input", hash_file(&input)?);
            let payload = json!({
                "lower": est.lower,
                "upper": est.upper,
                "dualValue": est.dual_value,
                "dualWeights": est.dual_weights,
            });
            emit(&common, "oracle.json", &render(&meta, &payload)?)
        }

        Command::Workload { common, family, n, m, output } => {
            let family: WorkloadFamily = family.parse()?;
            let rows = oracles::gen_workload(&WorkloadSpec {
                family,
                dim_n: n,
                rows_m: m,
                seed: common.seed,
            })?;
            io::write_matrix_csv(&output, &rows)?;
            log::info!("wrote {} rows to {}", rows.len(), output.display());
            Ok(())
        }
    }
}

fn transpose(cols: &[Vec<f64>]) -> Vec<Vec<f64>> {
    // Columns arrive as lines; the oracle wants the matrix rows.
    let m = cols[0].len();
    (0..m).map(|i| cols.iter().map(|c| c[i]).collect()).collect()
}

fn run_sweep(
    seeds: &[u64],
    jobs: usize,
    run_one: impl Fn(u64) -> Result<serde_json::Value> + Sync,
) -> Result<Vec<serde_json::Value>> {
    if jobs <= 1 || seeds.len() <= 1 {
        return seeds.iter().map(|&s| run_one(s)).collect();
    }
    let results: Vec<std::sync::Mutex<Option<Result<serde_json::Value>>>> =
        seeds.iter().map(|_| std::sync::Mutex::new(None)).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(seeds.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= seeds.len() {
                    break;
                }
                *results[i].lock().unwrap() = Some(run_one(seeds[i]));
            });
        }
    });
    results
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("worker finished"))
        .collect()
}
