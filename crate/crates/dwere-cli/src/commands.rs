//! Command implementations: resolve parameters, call the library, write
//! artifacts (CSV, JSON, environment files, config echo), report progress.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};

use dwere::constructions;
use dwere::env::{CookieDistribution, Environment, Window};
use dwere::estimate::{
    check_concavity, check_main_bound, check_subadditivity, estimate_annulus_decay,
    estimate_rate_function, estimate_return_distribution, EstimateParams, Verdict3,
};
use dwere::surgery::{
    eliminate_backtracking, is_subenvironment, planted_backtracking_instance, raise_stack,
    EliminationOutcome, SubenvParams,
};
use dwere::walk::{run, RunConfig};

use crate::config::{
    Count, EstimateSection, FileConfig, Resolved, SimulateSection, SurgerySection,
};
use crate::{CommonFlags, ConfigError, EstimateCommand};

fn bad(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

struct OutDir {
    dir: Option<PathBuf>,
}

impl OutDir {
    fn new(resolved: &Resolved) -> Result<Self> {
        let dir = match &resolved.out {
            Some(d) => {
                let p = PathBuf::from(d);
                std::fs::create_dir_all(&p)
                    .with_context(|| format!("cannot create output directory {}", p.display()))?;
                Some(p)
            }
            None => None,
        };
        Ok(Self { dir })
    }

    /// Write (or skip without an output directory). Files land as soon as
    /// each stage finishes, so an interrupted run keeps its completed parts.
    fn write(&self, name: &str, contents: &str) -> Result<()> {
        if let Some(dir) = &self.dir {
            let path = dir.join(name);
            std::fs::write(&path, contents)
                .with_context(|| format!("cannot write {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        Ok(())
    }

    fn echo(&self, command: &str, resolved: &Resolved, section: FileConfig) -> Result<()> {
        let mut snapshot = section;
        snapshot.command = Some(command.to_string());
        snapshot.common = Some(resolved.common_section());
        self.write(
            "config_echo.toml",
            &toml::to_string_pretty(&snapshot).context("config echo")?,
        )
    }
}

fn json_pretty<T: serde::Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

pub struct SimulateArgs {
    pub example: bool,
    pub construct: Option<String>,
    pub k: Option<u64>,
    pub start: Option<i64>,
    pub chain: Option<u64>,
    pub site: Option<i64>,
}

pub fn simulate(resolved: &Resolved, args: SimulateArgs) -> Result<ExitCode> {
    let out = OutDir::new(resolved)?;
    let (env, max_steps, label) = build_simulation_environment(resolved, &args)?;
    let outcome = run(
        &env,
        &RunConfig::new(max_steps)
            .record_trajectory(true)
            .detect_loops(true),
    )?;

    let traj = outcome.trajectory.as_ref().expect("recording on");
    if traj.len() <= 4096 {
        let joined: Vec<String> = traj.iter().map(|x| x.to_string()).collect();
        println!("trajectory: {}", joined.join(","));
    }
    println!("stop_reason: {}", serde_json::to_value(outcome.stop_reason)?.as_str().unwrap());
    match outcome.returns_to_origin() {
        Some(d0) => println!("D_0 = {d0}"),
        None => println!("D_0 = inf (certified loop through the origin)"),
    }
    if let Some(cert) = &outcome.loop_certificate {
        println!("loop: entry_time={} period={}", cert.entry_time, cert.period);
    }

    out.write("trajectory.txt", &outcome.trajectory_dump().expect("recording on"))?;
    out.write("outcome.json", &json_pretty(&outcome.record(resolved.seed))?)?;
    out.write("environment.env", &env.to_text())?;
    out.echo(
        &format!("simulate {label}"),
        resolved,
        FileConfig {
            simulate: Some(SimulateSection {
                example: Some(args.example),
                construct: args.construct.clone(),
                k: args.k.map(Count),
                start: args.start,
                chain: args.chain.map(Count),
                site: args.site,
            }),
            ..Default::default()
        },
    )?;
    Ok(ExitCode::SUCCESS)
}

fn build_simulation_environment(
    resolved: &Resolved,
    args: &SimulateArgs,
) -> Result<(Environment, u64, String)> {
    if args.example {
        let env = constructions::example_environment()?;
        return Ok((env, resolved.max_steps.min(10), "example".into()));
    }
    let dist = resolved.distribution()?;
    match args.construct.as_deref() {
        None => {
            let window = match resolved.window {
                Some((lo, hi)) => Window::new(lo, hi)?,
                None => {
                    let half = resolved.max_jump as i64 * resolved.max_steps as i64;
                    Window::new(-half, half)?
                }
            };
            let env = Environment::sample(dist, resolved.stack_height, resolved.seed, window)?;
            Ok((env, resolved.max_steps, "random".into()))
        }
        Some("k-returns") => {
            let k = args.k.ok_or_else(|| bad("k-returns needs --k"))?;
            let kr = constructions::build_k_returns(k, resolved.stack_height)
                .map_err(|e| bad(e.to_string()))?;
            let half = (2 * k as i64 + 8).max(50);
            let base = Environment::sample(
                dist,
                resolved.stack_height,
                resolved.seed,
                Window::new(-half, half)?,
            )?;
            Ok((kr.patch.apply(&base)?, resolved.max_steps, format!("k-returns k={k}")))
        }
        Some("trap") => {
            let start = args.start.unwrap_or(0);
            let patch = constructions::build_trap(start, resolved.max_jump, resolved.stack_height)
                .map_err(|e| bad(e.to_string()))?;
            let half = (start.abs() + resolved.max_jump as i64 + 50).max(200);
            let base = Environment::sample(
                dist,
                resolved.stack_height,
                resolved.seed,
                Window::new(-half, half)?,
            )?;
            Ok((patch.apply(&base)?, resolved.max_steps, format!("trap start={start}")))
        }
        Some("blocker") => {
            let site = args.site.unwrap_or(0);
            let patch = constructions::build_blocker(site, resolved.stack_height);
            let half = (site.abs() + 50).max(200);
            let base = Environment::sample(
                dist,
                resolved.stack_height,
                resolved.seed,
                Window::new(-half, half)?,
            )?;
            Ok((patch.apply(&base)?, resolved.max_steps, format!("blocker site={site}")))
        }
        Some("ballistic") => {
            let chain = args.chain.unwrap_or(10);
            let patch = constructions::build_ballistic(chain, resolved.max_jump);
            let half = (chain as i64 + 2) * resolved.max_jump as i64 + 50;
            let base = Environment::sample(
                dist,
                resolved.stack_height,
                resolved.seed,
                Window::new(-half, half)?,
            )?;
            Ok((patch.apply(&base)?, resolved.max_steps, format!("ballistic chain={chain}")))
        }
        Some(other) => Err(bad(format!("unknown construction {other:?}"))),
    }
}

pub fn estimate(
    which: EstimateCommand,
    section: EstimateSection,
    resolve: &dyn Fn(&CommonFlags) -> Result<Resolved>,
) -> Result<ExitCode> {
    match which {
        EstimateCommand::Rate { common, lambda, n, theta } => {
            let resolved = resolve(&common)?;
            let dist = resolved.distribution()?;
            let out = OutDir::new(&resolved)?;
            let lambda = lambda
                .map(|l| l.0)
                .or(section.lambda.clone())
                .ok_or_else(|| bad("rate needs --lambda"))?;
            let n = n
                .map(|v| v.0)
                .or_else(|| section.n.clone().map(|v| v.iter().map(|c| c.0).collect()))
                .ok_or_else(|| bad("rate needs --n"))?;
            let theta = theta.or(section.theta);
            if theta.is_some() {
                eprintln!("note: rates use the linear threshold; theta applies to event estimates");
            }
            let params = estimate_params(&resolved);
            let table = estimate_rate_function(&dist, resolved.stack_height, &lambda, &n, &params)?;
            if table.below_theorem_stack_height {
                eprintln!("note: stack height below 3; the rate limit is only proven for M >= 3");
            }
            print!("{}", table.csv());
            out.write("rate.csv", &table.csv())?;
            out.write("rate.json", &json_pretty(&table)?)?;
            out.echo("estimate rate", &resolved, estimate_echo(&section, &lambda, &n))?;
            Ok(ExitCode::SUCCESS)
        }
        EstimateCommand::Returns { common, kmax } => {
            let resolved = resolve(&common)?;
            let dist = resolved.distribution()?;
            let out = OutDir::new(&resolved)?;
            let kmax = kmax.or(section.kmax.map(|c| c.0)).unwrap_or(5);
            let params = estimate_params(&resolved);
            let r = estimate_return_distribution(&dist, resolved.stack_height, kmax, &params)?;
            print!("{}", r.csv());
            if r.flagged_indeterminate {
                eprintln!("warning: indeterminate fraction above 1%; raise --max-steps");
            }
            out.write("returns.csv", &r.csv())?;
            out.write("returns.json", &json_pretty(&r)?)?;
            out.echo("estimate returns", &resolved, FileConfig::default())?;
            Ok(ExitCode::SUCCESS)
        }
        EstimateCommand::Annulus { common, kmax, fit } => {
            let resolved = resolve(&common)?;
            let dist = resolved.distribution()?;
            let out = OutDir::new(&resolved)?;
            let kmax = kmax.or(section.kmax.map(|c| c.0)).unwrap_or(15);
            let fit = match fit {
                Some((lo, hi)) => (lo.max(0) as u64, hi.max(0) as u64),
                None => (5.min(kmax), 15.min(kmax)),
            };
            let params = estimate_params(&resolved);
            let r = estimate_annulus_decay(&dist, resolved.stack_height, kmax, fit, &params)?;
            print!("{}", r.csv());
            if let Some(f) = &r.fit {
                println!(
                    "fit over k in [{},{}]: slope {:.4} +- {:.4}, c_hat {:.4}",
                    fit.0,
                    fit.1,
                    f.slope,
                    f.slope_se,
                    r.c_hat.unwrap()
                );
            }
            out.write("annulus.csv", &r.csv())?;
            out.write("annulus.json", &json_pretty(&r)?)?;
            out.echo("estimate annulus", &resolved, FileConfig::default())?;
            Ok(ExitCode::SUCCESS)
        }
        EstimateCommand::Subadd { common, lambda, pair } => {
            let resolved = resolve(&common)?;
            let dist = resolved.distribution()?;
            let out = OutDir::new(&resolved)?;
            let lambda = lambda.or(section.lambda.as_ref().and_then(|v| v.first().copied()))
                .ok_or_else(|| bad("subadd needs --lambda"))?;
            let pair = pair
                .map(|v| v.0)
                .or_else(|| section.pair.clone().map(|v| v.iter().map(|c| c.0).collect()))
                .ok_or_else(|| bad("subadd needs --pair n,m"))?;
            if pair.len() != 2 {
                return Err(bad("--pair takes exactly two horizons"));
            }
            let params = estimate_params(&resolved);
            let r = check_subadditivity(
                &dist,
                resolved.stack_height,
                lambda,
                pair[0],
                pair[1],
                &params,
            )?;
            println!(
                "p({}) = {:.6e}, p({}) = {:.6e}, p({}) = {:.6e}, product = {:.6e}, margin = {:.3e}, verdict {:?}",
                r.n, r.p_n, r.m, r.p_m, r.n + r.m, r.p_sum, r.product, r.margin, r.verdict
            );
            println!(
                "coupled stream: se {:.3e} vs independent {:.3e}",
                r.coupled.se_coupled, r.coupled.se_independent
            );
            out.write("subadd.json", &json_pretty(&r)?)?;
            out.echo("estimate subadd", &resolved, FileConfig::default())?;
            Ok(verdict_exit(r.verdict))
        }
        EstimateCommand::Concavity { common, lambda, n } => {
            let resolved = resolve(&common)?;
            let dist = resolved.distribution()?;
            let out = OutDir::new(&resolved)?;
            let lambda = lambda
                .map(|l| l.0)
                .or(section.lambda.clone())
                .ok_or_else(|| bad("concavity needs --lambda"))?;
            let n = n
                .map(|v| v.0)
                .or_else(|| section.n.clone().map(|v| v.iter().map(|c| c.0).collect()))
                .ok_or_else(|| bad("concavity needs --n"))?;
            let params = estimate_params(&resolved);
            let table = estimate_rate_function(&dist, resolved.stack_height, &lambda, &n, &params)?;
            let report = check_concavity(&table)?;
            for t in &report.triples {
                println!(
                    "n={} mid={}: excess {:.4e} (se {:.3e}){}",
                    t.n,
                    t.lambda_mid,
                    t.excess,
                    t.se,
                    if t.beyond_3se { " VIOLATION" } else { "" }
                );
            }
            println!("violations at largest n: {}", report.violations_at_largest_n);
            out.write("rate.csv", &table.csv())?;
            out.write("concavity.json", &json_pretty(&report)?)?;
            out.echo("estimate concavity", &resolved, estimate_echo(&section, &lambda, &n))?;
            Ok(ExitCode::SUCCESS)
        }
        EstimateCommand::Mainbound { common, lambda, n } => {
            let resolved = resolve(&common)?;
            let dist = resolved.distribution()?;
            let out = OutDir::new(&resolved)?;
            let lambda = lambda.or(section.lambda.as_ref().and_then(|v| v.first().copied()))
                .ok_or_else(|| bad("mainbound needs --lambda"))?;
            let n = n
                .map(|v| v.0)
                .or_else(|| section.n.clone().map(|v| v.iter().map(|c| c.0).collect()))
                .ok_or_else(|| bad("mainbound needs --n"))?;
            let params = estimate_params(&resolved);
            let grid: Vec<(u64, u64)> = n.iter().map(|&h| (h, resolved.trials)).collect();
            let r = check_main_bound(&dist, resolved.stack_height, lambda, &grid, &params)?;
            print!("{}", r.csv());
            println!("theoretical log C = {:.3}", r.theoretical_log_c);
            out.write("mainbound.csv", &r.csv())?;
            out.write("mainbound.json", &json_pretty(&r)?)?;
            out.echo("estimate mainbound", &resolved, FileConfig::default())?;
            if r.cells.iter().any(|c| !c.conclusive) {
                eprintln!("some cells are inconclusive (zero successes)");
                return Ok(ExitCode::from(3));
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn estimate_echo(section: &EstimateSection, lambda: &[f64], n: &[u64]) -> FileConfig {
    FileConfig {
        estimate: Some(EstimateSection {
            lambda: Some(lambda.to_vec()),
            n: Some(n.iter().map(|&x| Count(x)).collect()),
            ..section.clone()
        }),
        ..Default::default()
    }
}

fn estimate_params(resolved: &Resolved) -> EstimateParams {
    let mut p = EstimateParams::new(resolved.trials, resolved.seed)
        .with_max_steps(resolved.max_steps);
    if let Some((lo, hi)) = resolved.window {
        p = p.with_window(lo, hi);
    }
    p
}

fn verdict_exit(v: Verdict3) -> ExitCode {
    match v {
        Verdict3::Pass | Verdict3::Fail => ExitCode::SUCCESS,
        Verdict3::Inconclusive => ExitCode::from(3),
    }
}

pub struct SurgeryArgs {
    pub lambda: Option<f64>,
    pub n: Option<u64>,
    pub seeds: Option<u64>,
    pub budget: Option<u64>,
    pub verify_only: Option<Vec<PathBuf>>,
    pub ell: Option<i64>,
    pub pivot: Option<i64>,
    pub raise: Option<String>,
    pub env: Option<PathBuf>,
}

pub fn surgery(resolved: &Resolved, args: SurgeryArgs) -> Result<ExitCode> {
    let out = OutDir::new(resolved)?;

    if let Some(files) = &args.verify_only {
        let ell = args.ell.ok_or_else(|| bad("--verify-only needs --ell"))?;
        let pivot = args.pivot.ok_or_else(|| bad("--verify-only needs --pivot"))?;
        let before = load_env(&files[0], resolved)?;
        let after = load_env(&files[1], resolved)?;
        let params = SubenvParams::new(ell, pivot).map_err(|e| bad(e.to_string()))?;
        return match is_subenvironment(&after, &before, &params, resolved.max_steps) {
            Ok(holds) => {
                println!(
                    "subenvironment(ell={ell}, pivot={pivot}): {}",
                    if holds { "HOLDS" } else { "VIOLATED" }
                );
                Ok(ExitCode::SUCCESS)
            }
            Err(dwere::Error::NotInDomain(msg)) | Err(dwere::Error::Precondition(msg)) => {
                println!("inconclusive: {msg}");
                Ok(ExitCode::from(3))
            }
            Err(dwere::Error::BudgetExhausted { budget }) => {
                println!("inconclusive: budget of {budget} steps exhausted");
                Ok(ExitCode::from(3))
            }
            Err(e) => Err(e.into()),
        };
    }

    if let Some(spec) = &args.raise {
        let parts: Vec<i64> = spec
            .split(',')
            .map(|p| p.trim().parse::<i64>().map_err(|_| bad(format!("bad --raise field {p:?}"))))
            .collect::<Result<_>>()?;
        if parts.len() != 4 || parts[2] < 0 || parts[3] < 0 {
            return Err(bad("--raise takes a,b,ta,tb with nonnegative times"));
        }
        let env_path = args.env.as_ref().ok_or_else(|| bad("--raise needs --env FILE"))?;
        let env = load_env(env_path, resolved)?;
        let r = raise_stack(&env, parts[0], parts[1], parts[2] as u64, parts[3] as u64)?;
        println!(
            "modified {} site(s), excised {} step(s), splice verified: {}",
            r.modified_sites.len(),
            r.t_saved,
            r.checks.traj_splice
        );
        out.write("before.env", &r.before.to_text())?;
        out.write("after.env", &r.after.to_text())?;
        out.write("surgery.json", &json_pretty(&r.record())?)?;
        return Ok(ExitCode::SUCCESS);
    }

    // Batch elimination over planted instances.
    let lambda = args.lambda.ok_or_else(|| bad("surgery needs --lambda"))?;
    let n = args.n.ok_or_else(|| bad("surgery needs --n"))?;
    let seeds = args.seeds.unwrap_or(100);
    let budget = args.budget.unwrap_or(10 * n);
    let dist = resolved.distribution()?;

    let mut lines = String::new();
    let mut successes = 0u64;
    let mut obstructed = 0u64;
    let mut iterations_total = 0u64;
    for i in 0..seeds {
        let seed = dwere::rng::substream(resolved.seed, i);
        let env = planted_backtracking_instance(&dist, resolved.stack_height, lambda, n, seed)?;
        match eliminate_backtracking(&env, lambda, n, budget)? {
            EliminationOutcome::Eliminated(r) => {
                let ok = r.checks.all_hold();
                if ok {
                    successes += 1;
                } else {
                    obstructed += 1;
                }
                iterations_total += r.iterations;
                println!(
                    "seed {i}: {} iterations={} t_saved={} modified={}",
                    if ok { "PASS" } else { "FAIL" },
                    r.iterations,
                    r.t_saved,
                    r.modified_sites.len()
                );
                let mut rec = r.record();
                rec["seed_index"] = serde_json::json!(i);
                rec["status"] = serde_json::json!(if ok { "pass" } else { "fail" });
                lines.push_str(&serde_json::to_string(&rec)?);
                lines.push('\n');
            }
            EliminationOutcome::Obstructed(o) => {
                obstructed += 1;
                println!("seed {i}: OBSTRUCTED at site {} ({})", o.site, o.reason);
                let mut rec = serde_json::to_value(&o)?;
                rec["seed_index"] = serde_json::json!(i);
                rec["status"] = serde_json::json!("obstructed");
                lines.push_str(&serde_json::to_string(&rec)?);
                lines.push('\n');
            }
        }
    }
    println!(
        "eliminated {successes}/{seeds} (obstructed {obstructed}), mean iterations {:.2}",
        iterations_total as f64 / successes.max(1) as f64
    );
    out.write("surgery_results.jsonl", &lines)?;
    out.echo(
        "surgery",
        resolved,
        FileConfig {
            surgery: Some(SurgerySection {
                lambda: Some(lambda),
                n: Some(Count(n)),
                seeds: Some(Count(seeds)),
                budget: Some(Count(budget)),
                ell: None,
                pivot: None,
            }),
            ..Default::default()
        },
    )?;
    Ok(ExitCode::SUCCESS)
}

fn load_env(path: &Path, resolved: &Resolved) -> Result<Environment> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read environment {}", path.display()))?;
    let dist = match &resolved.weights {
        Some(w) => Some(CookieDistribution::new(resolved.max_jump, w.clone())?),
        None => None,
    };
    Ok(Environment::from_text(&text, dist)?)
}

pub struct ConstructArgs {
    pub kind: Option<String>,
    pub k: Option<u64>,
    pub start: Option<i64>,
    pub chain: Option<u64>,
    pub site: Option<i64>,
}

pub fn construct(resolved: &Resolved, args: ConstructArgs) -> Result<ExitCode> {
    let out = OutDir::new(resolved)?;
    let dist = resolved.distribution()?;
    let kind = args.kind.as_deref().ok_or_else(|| bad("construct needs --kind"))?;
    let (patch, default_half) = match kind {
        "k-returns" => {
            let k = args.k.ok_or_else(|| bad("k-returns needs --k"))?;
            let kr = constructions::build_k_returns(k, resolved.stack_height)
                .map_err(|e| bad(e.to_string()))?;
            (kr.patch, 2 * k as i64 + 8)
        }
        "trap" => {
            let start = args.start.unwrap_or(0);
            (
                constructions::build_trap(start, resolved.max_jump, resolved.stack_height)
                    .map_err(|e| bad(e.to_string()))?,
                start.abs() + resolved.max_jump as i64 + 8,
            )
        }
        "blocker" => {
            let site = args.site.unwrap_or(0);
            (
                constructions::build_blocker(site, resolved.stack_height),
                site.abs() + 8,
            )
        }
        "ballistic" => {
            let chain = args.chain.unwrap_or(10);
            (
                constructions::build_ballistic(chain, resolved.max_jump),
                (chain as i64 + 2) * resolved.max_jump as i64 + 8,
            )
        }
        other => return Err(bad(format!("unknown construction {other:?}"))),
    };
    let window = match resolved.window {
        Some((lo, hi)) => Window::new(lo, hi)?,
        None => Window::new(-default_half, default_half)?,
    };
    let base = Environment::sample(dist.clone(), resolved.stack_height, resolved.seed, window)?;
    let text = patch.to_text(&base)?;
    println!(
        "{kind}: {} pinned cookie(s), event probability {:.6e}, lower bound {:.6e}",
        patch.pinned_count(),
        patch.event_probability(&dist),
        patch.probability_lower_bound(&dist)
    );
    print!("{text}");
    out.write(&format!("{kind}.env"), &text)?;
    Ok(ExitCode::SUCCESS)
}
