//! `da` — run, verify, and inspect posted-price double auctions.
//!
//! Exit codes: 0 success, 1 failed verification (or I/O trouble), 2 rejected
//! input (instance file or flags), 3 mechanism/instance mismatch, 4 an exact
//! enumeration or search cap was exceeded.

mod instance_file;
mod report;

use clap::{Args, Parser, Subcommand};
use double_auction::engine::ProfileSpace;
use double_auction::harness::DEFAULT_STRATEGY_CAP;
use double_auction::matroid::{Matroid, MatroidError};
use double_auction::pricing::{MatroidSbbPricing, MatroidWbbPricing};
use double_auction::rational::{format_rat, format_rat_decimal};
use double_auction::{
    dsic_report, expected_ratio, ir_test, lemma_suite, run_audits, AgentId, Constraint, Engine,
    EngineError, EngineMode, HarnessError, Instance, KnapsackBranch, Mechanism, MechanismError,
    OrderPolicy, Parallelism, Prepared, Price, PriceTable, PricingError, Rat, Role, Strategy,
};
use report::{agent_label, SuiteOutcome, SuiteStatus};
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Parser)]
#[command(
    name = "da",
    version,
    about = "Posted-price double auctions: run them, verify their guarantees, inspect their prices",
    long_about = "Posted-price double auctions: run them, verify their guarantees, inspect their prices.\n\n\
        The default expectation engine enumerates value profiles exactly; it can be switched\n\
        per invocation (--samples/--exact-cap) or globally with DA_ENGINE (\"exact\",\n\
        \"exact:CAP\", \"mc:SAMPLES\" or \"mc:SAMPLES:SEED\"). DA_PARALLELISM=sequential\n\
        disables data parallelism; results are identical either way."
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Measure a mechanism on an instance and write a run report.
    Run(RunArgs),
    /// Check budget, incentive, participation, and price-structure properties.
    Verify(VerifyArgs),
    /// Print every price the mechanism quotes, plus state tables where prices
    /// depend on the run state.
    Prices(PricesArgs),
    /// Rewrite an instance file in canonical form.
    Canon(CanonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Market description file (TOML).
    #[arg(long, value_name = "PATH")]
    instance: PathBuf,
    /// Mechanism: bilateral, matroid-sbb, matroid-wbb, combinatorial,
    /// knapsack-sbb, knapsack-wbb, knapsack-general-sbb, knapsack-general-wbb
    /// (negative controls: mutant-price-shaving, mutant-forced-trade,
    /// mutant-reoffer).
    #[arg(long, value_name = "NAME")]
    mechanism: String,
    /// Exact engine: refuse product supports above this size.
    #[arg(long, value_name = "N", conflicts_with = "samples")]
    exact_cap: Option<usize>,
    /// Estimate expectations from N Monte Carlo samples instead of exact sums.
    #[arg(long, value_name = "N")]
    samples: Option<usize>,
    /// Seed for sampling and seeded orders.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Arrival-order policy: canonical, greedy, random[:TRIALS],
    /// exhaustive[:CAP], or fixed:b0,s1,...
    #[arg(long, value_name = "POLICY", default_value = "exhaustive")]
    order: String,
    /// Write the report here instead of stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Report format.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Arrival order for the audited runs: canonical, greedy, random[:SEED],
    /// or fixed:b0,s1,...
    #[arg(long, value_name = "ORDER", default_value = "canonical")]
    order: String,
    /// Check budget-balance ledgers and per-run price identities.
    #[arg(long)]
    budget: bool,
    /// Check that truthful reporting is a dominant strategy.
    #[arg(long)]
    dsic: bool,
    /// Check individual rationality against walk-away utilities.
    #[arg(long)]
    ir: bool,
    /// Check the structural price lemmas (matroid markets).
    #[arg(long)]
    lemmas: bool,
    /// Write the report here instead of stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PricesArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Print the full state table even when it is large.
    #[arg(long)]
    states: bool,
}

#[derive(Args)]
struct CanonArgs {
    /// Market description file (TOML).
    #[arg(long, value_name = "PATH")]
    instance: PathBuf,
    /// Write the canonical form here instead of stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

// ---------------------------------------------------------------------------
// Errors and exit codes
// ---------------------------------------------------------------------------

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Write { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Instance { path: String, source: instance_file::ParseError },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Pricing(#[from] PricingError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Matroid(#[from] MatroidError),
    #[error(transparent)]
    Unwritable(#[from] instance_file::WriteError),
    #[error("verification failed")]
    ChecksFailed,
}

fn engine_code(err: &EngineError) -> i32 {
    match err {
        EngineError::CapExceeded { .. } => 4,
        EngineError::NonScalarSupport => 3,
        EngineError::NoSamples => 2,
    }
}

fn pricing_code(err: &PricingError) -> i32 {
    match err {
        PricingError::Engine(e) => engine_code(e),
        PricingError::Oracle(o) => match o {
            double_auction::oracle::OracleError::NotUnitMarket => 3,
            _ => 4,
        },
        PricingError::NotMatroid
        | PricingError::NotKnapsack
        | PricingError::NotBilateral
        | PricingError::TooFewItems(_)
        | PricingError::SellerWeightInStrongRegime => 3,
        PricingError::TooManyItemsForXos { .. } => 4,
    }
}

fn mechanism_code(err: &MechanismError) -> i32 {
    match err {
        MechanismError::Incompatible { .. } => 3,
        MechanismError::Pricing(e) => pricing_code(e),
        MechanismError::Engine(e) => engine_code(e),
        MechanismError::Market(_) => 1,
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Read { .. } | CliError::Write { .. } => 1,
            CliError::Instance { .. } | CliError::Usage(_) => 2,
            CliError::Mechanism(e) => mechanism_code(e),
            CliError::Pricing(e) => pricing_code(e),
            CliError::Engine(e) => engine_code(e),
            CliError::Harness(e) => match e {
                HarnessError::Mechanism(e) => mechanism_code(e),
                HarnessError::Engine(e) => engine_code(e),
                HarnessError::Pricing(e) => pricing_code(e),
                HarnessError::Market(_) => 1,
                HarnessError::Order(_) => 2,
                HarnessError::StrategyCapExceeded(_) | HarnessError::TooManyAgents(_) => 4,
                HarnessError::ExhaustiveNeedsExact => 2,
            },
            CliError::Matroid(e) => match e {
                MatroidError::GroundTooLarge(_) => 4,
                _ => 2,
            },
            CliError::Unwritable(_) => 1,
            CliError::ChecksFailed => 1,
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Run(args) => cmd_run(args),
        Cmd::Verify(args) => cmd_verify(args),
        Cmd::Prices(args) => cmd_prices(args),
        Cmd::Canon(args) => cmd_canon(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

fn load_instance(path: &Path) -> Result<instance_file::NamedInstance, CliError> {
    let display = path.display().to_string();
    let source = std::fs::read_to_string(path)
        .map_err(|source| CliError::Read { path: display.clone(), source })?;
    instance_file::parse_str(&source).map_err(|source| CliError::Instance { path: display, source })
}

fn parse_mechanism(name: &str) -> Result<Mechanism, CliError> {
    Mechanism::from_name(name).ok_or_else(|| {
        let known: Vec<&str> = Mechanism::ALL.iter().map(|m| m.name()).collect();
        CliError::Usage(format!(
            "unknown mechanism {name:?}; expected one of {} (or a mutant-* negative control)",
            known.join(", ")
        ))
    })
}

/// Engine from flags, falling back to `DA_ENGINE`, then to exact defaults.
fn resolve_engine(common: &CommonArgs) -> Result<Engine, CliError> {
    let mut engine = if let Some(samples) = common.samples {
        Engine::monte_carlo(samples, common.seed.unwrap_or(0))
    } else if let Some(cap) = common.exact_cap {
        Engine::exact(cap)
    } else {
        match std::env::var("DA_ENGINE") {
            Ok(spec) => parse_engine_spec(&spec, common.seed)?,
            Err(_) => Engine::exact_default(),
        }
    };
    if let Ok(par) = std::env::var("DA_PARALLELISM") {
        engine = engine.with_parallelism(parse_parallelism(&par)?);
    }
    if let EngineMode::MonteCarlo { samples, .. } = engine.mode {
        if samples == 0 {
            return Err(CliError::Engine(EngineError::NoSamples));
        }
    }
    Ok(engine)
}

fn parse_engine_spec(spec: &str, seed_flag: Option<u64>) -> Result<Engine, CliError> {
    let bad = || CliError::Usage(format!(
        "DA_ENGINE={spec:?} not understood; use \"exact\", \"exact:CAP\", \"mc:SAMPLES\" or \"mc:SAMPLES:SEED\""
    ));
    let mut parts = spec.split(':');
    match parts.next() {
        Some("exact") => {
            let cap = match parts.next() {
                Some(cap) => cap.parse().map_err(|_| bad())?,
                None => double_auction::DEFAULT_EXACT_CAP,
            };
            if parts.next().is_some() {
                return Err(bad());
            }
            Ok(Engine::exact(cap))
        }
        Some("mc") => {
            let samples = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let seed = match parts.next() {
                Some(seed) => seed.parse().map_err(|_| bad())?,
                None => seed_flag.unwrap_or(0),
            };
            if parts.next().is_some() {
                return Err(bad());
            }
            Ok(Engine::monte_carlo(samples, seed))
        }
        _ => Err(bad()),
    }
}

fn parse_parallelism(value: &str) -> Result<Parallelism, CliError> {
    match value {
        "sequential" => Ok(Parallelism::Sequential),
        #[cfg(feature = "parallel")]
        "parallel" => Ok(Parallelism::Parallel),
        other => Err(CliError::Usage(format!(
            "DA_PARALLELISM={other:?} not understood; use \"parallel\" or \"sequential\""
        ))),
    }
}

fn parse_agent(text: &str) -> Option<AgentId> {
    let (role, index) = text.split_at(1);
    let index = index.parse().ok()?;
    match role {
        "b" => Some(AgentId { role: Role::Buyer, index }),
        "s" => Some(AgentId { role: Role::Seller, index }),
        _ => None,
    }
}

fn parse_agent_list(text: &str) -> Result<Vec<AgentId>, CliError> {
    text.split(',')
        .map(|part| {
            parse_agent(part.trim()).ok_or_else(|| {
                CliError::Usage(format!("cannot parse agent {part:?}; expected b<i> or s<j>"))
            })
        })
        .collect()
}

fn parse_policy(order: &str, seed: Option<u64>) -> Result<OrderPolicy, CliError> {
    let (head, tail) = match order.split_once(':') {
        Some((head, tail)) => (head, Some(tail)),
        None => (order, None),
    };
    let numeric = |what: &str, tail: Option<&str>, default: usize| -> Result<usize, CliError> {
        match tail {
            Some(text) => text.parse().map_err(|_| {
                CliError::Usage(format!("{what} wants a number, got {text:?}"))
            }),
            None => Ok(default),
        }
    };
    match head {
        "canonical" if tail.is_none() => Ok(OrderPolicy::Canonical),
        "greedy" if tail.is_none() => Ok(OrderPolicy::Greedy),
        "random" => Ok(OrderPolicy::Random {
            seed: seed.unwrap_or(0),
            trials: numeric("random", tail, 64)?,
        }),
        "exhaustive" => Ok(OrderPolicy::Exhaustive {
            cap: numeric("exhaustive", tail, DEFAULT_STRATEGY_CAP)?,
        }),
        "fixed" => Ok(OrderPolicy::Fixed(parse_agent_list(tail.unwrap_or(""))?)),
        _ => Err(CliError::Usage(format!(
            "unknown order policy {order:?}; expected canonical, greedy, random[:TRIALS], exhaustive[:CAP], or fixed:b0,s1,..."
        ))),
    }
}

fn parse_strategy(order: &str, seed: Option<u64>) -> Result<Strategy, CliError> {
    let (head, tail) = match order.split_once(':') {
        Some((head, tail)) => (head, Some(tail)),
        None => (order, None),
    };
    match head {
        "canonical" if tail.is_none() => Ok(Strategy::Canonical),
        "greedy" if tail.is_none() => Ok(Strategy::Greedy),
        "random" => {
            let seed = match tail {
                Some(text) => text.parse().map_err(|_| {
                    CliError::Usage(format!("random wants a seed, got {text:?}"))
                })?,
                None => seed.unwrap_or(0),
            };
            Ok(Strategy::Seeded(seed))
        }
        "fixed" => Ok(Strategy::Fixed(parse_agent_list(tail.unwrap_or(""))?)),
        _ => Err(CliError::Usage(format!(
            "unknown order {order:?}; expected canonical, greedy, random[:SEED], or fixed:b0,s1,..."
        ))),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Write {
            path: path.display().to_string(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// da run
// ---------------------------------------------------------------------------

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let named = load_instance(&args.common.instance)?;
    let mechanism = parse_mechanism(&args.common.mechanism)?;
    let engine = resolve_engine(&args.common)?;
    let policy = parse_policy(&args.order, args.common.seed)?;

    let prepared = mechanism.prepare(&named.instance, engine)?;
    let ratio = expected_ratio(&prepared, &policy)?;
    let worst = ratio.strategies[ratio.worst].strategy.clone();
    let trials = build_trials(&prepared, &worst)?;

    let meta = report::instance_meta(named.name.as_deref(), &named.instance);
    let run = report::run_report(meta, &engine, args.order.clone(), &ratio, trials);
    let text = match args.format {
        Format::Json => run.to_json(),
        Format::Csv => run.to_csv(),
    };
    emit(args.out.as_deref(), &text)
}

/// Re-execute the worst strategy over the same profiles the measurement
/// averaged: the enumerated support in exact mode, the seeded sample
/// sequence in Monte Carlo mode.
fn build_trials(
    prepared: &Prepared,
    strategy: &Strategy,
) -> Result<Vec<report::TrialRow>, CliError> {
    let instance = prepared.instance();
    let mut rows = Vec::new();
    match prepared.engine().mode {
        EngineMode::Exact { cap } => {
            let space = ProfileSpace::new(instance, cap)?;
            for index in 0..space.len() {
                let (profile, weight) = space.decode(index);
                let mut adversary = strategy
                    .adversary(instance)
                    .map_err(HarnessError::from)?;
                let run = prepared.run(&profile, adversary.as_mut())?;
                let welfare = double_auction::market::welfare(instance, &run.outcome, &profile);
                rows.push(report::trial_row(instance, index, Some(&weight), &profile, &run, &welfare));
            }
        }
        EngineMode::MonteCarlo { samples, seed } => {
            for index in 0..samples {
                let profile = instance.sample_profile(seed.wrapping_add(index as u64));
                let mut adversary = strategy
                    .adversary(instance)
                    .map_err(HarnessError::from)?;
                let run = prepared.run(&profile, adversary.as_mut())?;
                let welfare = double_auction::market::welfare(instance, &run.outcome, &profile);
                rows.push(report::trial_row(instance, index, None, &profile, &run, &welfare));
            }
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// da verify
// ---------------------------------------------------------------------------

fn cmd_verify(args: VerifyArgs) -> Result<(), CliError> {
    let named = load_instance(&args.common.instance)?;
    let mechanism = parse_mechanism(&args.common.mechanism)?;
    let engine = resolve_engine(&args.common)?;
    let strategy = parse_strategy(&args.order, args.common.seed)?;

    let prepared = mechanism.prepare(&named.instance, engine)?;
    let explicit = args.budget || args.dsic || args.ir || args.lemmas;
    let mut suites = Vec::new();

    if !explicit || args.budget {
        suites.push(budget_suite(&prepared, &strategy)?);
    }
    if !explicit || args.dsic {
        suites.push(dsic_suite(&prepared, &strategy)?);
    }
    if !explicit || args.ir {
        suites.push(ir_suite(&prepared, &strategy)?);
    }
    let is_matroid = matches!(named.instance.constraint(), Constraint::Matroid(_));
    if args.lemmas && !is_matroid {
        return Err(CliError::Mechanism(MechanismError::Incompatible {
            mechanism: "lemma suite",
            reason: "the price lemmas are stated for matroid markets".into(),
        }));
    }
    if args.lemmas || (!explicit && is_matroid) {
        match lemma_suite(&named.instance, &engine) {
            Ok(report) => suites.push(lemma_outcome(&report)),
            // An oversized market only skips the default sweep; asking for
            // the suite explicitly keeps the hard error (exit 4).
            Err(HarnessError::TooManyAgents(n)) if !args.lemmas => {
                suites.push(SuiteOutcome {
                    suite: "lemmas",
                    status: SuiteStatus::Skipped,
                    detail: format!("skipped: subset enumeration over {n} agents is above the supported 16"),
                    counterexample: None,
                });
            }
            Err(e) => return Err(e.into()),
        }
    } else if !explicit {
        suites.push(SuiteOutcome {
            suite: "lemmas",
            status: SuiteStatus::Skipped,
            detail: "skipped: no matroid constraint".into(),
            counterexample: None,
        });
    }

    let meta = report::instance_meta(named.name.as_deref(), &named.instance);
    let verify = report::VerifyReport::new(
        meta,
        mechanism.name().to_string(),
        &engine,
        strategy.label(),
        suites,
    );
    let passed = verify.passed;
    emit(args.out.as_deref(), &verify.to_json())?;
    if passed {
        Ok(())
    } else {
        Err(CliError::ChecksFailed)
    }
}

fn profile_json(instance: &Instance, profile: &double_auction::Profile) -> serde_json::Value {
    let items = instance.items();
    let map: serde_json::Map<String, serde_json::Value> = instance
        .agents()
        .map(|agent| {
            (
                agent_label(agent),
                serde_json::Value::String(report::valuation_text(profile.get(agent), items)),
            )
        })
        .collect();
    serde_json::Value::Object(map)
}

fn budget_suite(prepared: &Prepared, strategy: &Strategy) -> Result<SuiteOutcome, CliError> {
    let audit = run_audits(prepared, strategy)?;
    let passed = audit.budget_passed() && audit.offers_monotone() && audit.telescoping_exact();
    let detail = format!(
        "{} runs: {} ledger violations, {} offer-monotonicity violations, {} price identities checked",
        audit.runs,
        audit.budget_violations.len(),
        audit.offer_violations.len(),
        audit.telescoping.len(),
    );
    let counterexample = if passed {
        None
    } else if let Some((profile, violation)) = audit.budget_violations.first() {
        Some(serde_json::json!({ "profile": profile, "violation": violation.to_string() }))
    } else if let Some((profile, text)) = audit.offer_violations.first() {
        Some(serde_json::json!({ "profile": profile, "violation": text }))
    } else {
        audit.telescoping.iter().find(|row| !row.holds()).map(|row| {
            serde_json::json!({
                "profile": row.profile,
                "charged_total": format_rat(&row.charged_total),
                "price_gap": format_rat(&row.price_gap),
            })
        })
    };
    Ok(SuiteOutcome {
        suite: "budget",
        status: if passed { SuiteStatus::Passed } else { SuiteStatus::Failed },
        detail,
        counterexample,
    })
}

fn dsic_suite(prepared: &Prepared, strategy: &Strategy) -> Result<SuiteOutcome, CliError> {
    let rows = dsic_report(prepared, strategy)?;
    let worst = rows.iter().min_by(|a, b| a.margin.cmp(&b.margin));
    let passed = rows.iter().all(|row| row.passed());
    let detail = format!("{} deviation rows across {} agents", rows.len(), prepared.instance().agents().count());
    let counterexample = worst.filter(|row| !row.passed()).map(|row| {
        serde_json::json!({
            "agent": agent_label(row.agent),
            "profile": profile_json(prepared.instance(), &row.profile),
            "truthful_utility": format_rat(&row.truthful_utility),
            "best_report": report::valuation_text(&row.best_report, prepared.instance().items()),
            "best_utility": format_rat(&row.best_utility),
            "margin": format_rat(&row.margin),
        })
    });
    Ok(SuiteOutcome {
        suite: "dsic",
        status: if passed { SuiteStatus::Passed } else { SuiteStatus::Failed },
        detail,
        counterexample,
    })
}

fn ir_suite(prepared: &Prepared, strategy: &Strategy) -> Result<SuiteOutcome, CliError> {
    let violations = ir_test(prepared, strategy)?;
    let passed = violations.is_empty();
    let detail = if passed {
        "no agent ends below their walk-away utility".into()
    } else {
        format!("{} violations", violations.len())
    };
    let counterexample = violations.first().map(|v| {
        serde_json::json!({
            "agent": agent_label(v.agent),
            "profile": profile_json(prepared.instance(), &v.profile),
            "utility": format_rat(&v.utility),
            "baseline": format_rat(&v.baseline),
        })
    });
    Ok(SuiteOutcome {
        suite: "ir",
        status: if passed { SuiteStatus::Passed } else { SuiteStatus::Failed },
        detail,
        counterexample,
    })
}

fn lemma_outcome(report: &double_auction::LemmaReport) -> SuiteOutcome {
    let passed = report.passed();
    let detail = report
        .outcomes
        .iter()
        .map(|o| format!("{}: {}", o.name, if o.passed { "ok" } else { "violated" }))
        .collect::<Vec<_>>()
        .join("; ");
    let counterexample = report.outcomes.iter().find(|o| !o.passed).map(|o| {
        serde_json::json!({ "lemma": o.name, "detail": o.detail })
    });
    SuiteOutcome {
        suite: "lemmas",
        status: if passed { SuiteStatus::Passed } else { SuiteStatus::Failed },
        detail,
        counterexample,
    }
}

// ---------------------------------------------------------------------------
// da prices
// ---------------------------------------------------------------------------

fn fmt_rat(r: &Rat) -> String {
    format!("{} ({})", format_rat(r), format_rat_decimal(r, 4))
}

fn fmt_price(p: &Price) -> String {
    match p.finite() {
        Some(r) => fmt_rat(r),
        None => "blocked".into(),
    }
}

fn cmd_prices(args: PricesArgs) -> Result<(), CliError> {
    let named = load_instance(&args.common.instance)?;
    let mechanism = parse_mechanism(&args.common.mechanism)?;
    let engine = resolve_engine(&args.common)?;

    let prepared = mechanism.prepare(&named.instance, engine)?;
    let table = prepared.price_table()?;

    let mut out = String::new();
    let meta = report::instance_meta(named.name.as_deref(), &named.instance);
    writeln!(
        out,
        "market: {} ({} buyers, {} sellers, constraint {})",
        meta.name.as_deref().unwrap_or("unnamed"),
        meta.buyers,
        meta.sellers,
        meta.constraint
    )
    .unwrap();
    writeln!(out, "mechanism: {}", mechanism.name()).unwrap();
    if let Some((low, high)) = prepared.knapsack_expected_sides() {
        writeln!(out, "split: light side worth {}, heavy side worth {}", fmt_rat(low), fmt_rat(high)).unwrap();
    }
    writeln!(out).unwrap();
    render_table(&mut out, &named.instance, &table, None);

    match named.instance.constraint() {
        Constraint::Matroid(_) if mechanism == Mechanism::MatroidSbb => {
            sbb_state_table(&mut out, &named.instance, &engine, args.states)?;
        }
        Constraint::Matroid(_) if mechanism == Mechanism::MatroidWbb => {
            wbb_state_table(&mut out, &named.instance, &engine, args.states)?;
        }
        _ => {}
    }
    print!("{out}");
    Ok(())
}

/// Render one price table; `buyer_map` translates sub-market buyer indices
/// back to the enclosing market's labels.
fn render_table(out: &mut String, instance: &Instance, table: &PriceTable, buyer_map: Option<&[usize]>) {
    let buyer = |i: usize| {
        let original = buyer_map.map_or(i, |map| map[i]);
        format!("b{original}")
    };
    match table {
        PriceTable::Bilateral { posted } => {
            writeln!(out, "posted price: {}", fmt_rat(posted)).unwrap();
        }
        PriceTable::MatroidSbb { buyer_thresholds, seller_means, pair_prices } => {
            for (i, threshold) in buyer_thresholds.iter().enumerate() {
                writeln!(out, "buyer {} threshold: {}", buyer(i), fmt_price(threshold)).unwrap();
            }
            for (j, mean) in seller_means.iter().enumerate() {
                writeln!(out, "seller s{j} mean: {}", fmt_rat(mean)).unwrap();
            }
            for (i, row) in pair_prices.iter().enumerate() {
                for (j, price) in row.iter().enumerate() {
                    writeln!(out, "pair ({}, s{j}): {}", buyer(i), fmt_price(price)).unwrap();
                }
            }
        }
        PriceTable::MatroidWbb { agent_prices } => {
            for (agent, price) in agent_prices {
                let label = match (agent.role, buyer_map) {
                    (Role::Buyer, Some(map)) => format!("b{}", map[agent.index]),
                    _ => agent_label(*agent),
                };
                writeln!(out, "agent {label} price: {}", fmt_price(price)).unwrap();
            }
        }
        PriceTable::Combinatorial { item_prices } => {
            for (item, price) in item_prices.iter().enumerate() {
                writeln!(out, "item {} price: {}", instance.items()[item], fmt_rat(price)).unwrap();
            }
        }
        PriceTable::Knapsack { buyer_prices, seller_price } => {
            for (i, price) in buyer_prices.iter().enumerate() {
                writeln!(out, "buyer {} price: {}", buyer(i), fmt_rat(price)).unwrap();
            }
            if let Some(price) = seller_price {
                writeln!(out, "seller price: {}", fmt_rat(price)).unwrap();
            }
        }
        PriceTable::KnapsackGeneral { branch, buyer_map, table } => {
            let kept: Vec<String> = buyer_map.iter().map(|&i| format!("b{i}")).collect();
            writeln!(
                out,
                "branch: {} ({} side buyers: {})",
                branch,
                match branch {
                    KnapsackBranch::Low => "light",
                    KnapsackBranch::High => "heavy",
                },
                kept.join(", ")
            )
            .unwrap();
            render_table(out, instance, table, Some(buyer_map));
        }
    }
}

// ---------------------------------------------------------------------------
// da canon
// ---------------------------------------------------------------------------

fn cmd_canon(args: CanonArgs) -> Result<(), CliError> {
    let named = load_instance(&args.instance)?;
    let text = instance_file::write_str(named.name.as_deref(), &named.instance)?;
    emit(args.out.as_deref(), &text)
}

/// How many state rows to print without `--states`.
const STATE_ROW_LIMIT: usize = 200;

fn independent_sets(matroid: &Matroid) -> Result<Vec<BTreeSet<usize>>, CliError> {
    match matroid.to_explicit()? {
        Matroid::Explicit { independent, .. } => Ok(independent.into_iter().collect()),
        _ => unreachable!("to_explicit returns the explicit variant"),
    }
}

/// Buyer thresholds for every reachable `(served, capacity)` state: capacity
/// falls by one per processed seller, so at capacity `r` at most `k - r`
/// buyers are served.
fn sbb_state_table(
    out: &mut String,
    instance: &Arc<Instance>,
    engine: &Engine,
    force: bool,
) -> Result<(), CliError> {
    let Constraint::Matroid(matroid) = instance.constraint() else { return Ok(()) };
    let sets = independent_sets(matroid)?;
    let k = instance.n_sellers();
    let states: Vec<(usize, &BTreeSet<usize>)> = (0..=k)
        .rev()
        .flat_map(|r| sets.iter().filter(move |set| set.len() <= k - r).map(move |set| (r, set)))
        .collect();
    // The full-capacity empty state is already in the table above.
    let states: Vec<_> = states.into_iter().filter(|(r, set)| !(*r == k && set.is_empty())).collect();
    writeln!(out).unwrap();
    if states.len() > STATE_ROW_LIMIT && !force {
        writeln!(out, "state table omitted ({} further states; pass --states to print)", states.len()).unwrap();
        return Ok(());
    }
    writeln!(out, "buyer thresholds by state:").unwrap();
    let pricing = MatroidSbbPricing::new(Arc::clone(instance), *engine)?;
    for (r, served) in states {
        let labels: Vec<String> = served.iter().map(|&i| format!("b{i}")).collect();
        let mut cells = Vec::new();
        for i in 0..instance.n_buyers() {
            if served.contains(&i) {
                continue;
            }
            cells.push(format!("b{i}={}", fmt_price(&pricing.buyer_threshold(i, served, r)?)));
        }
        writeln!(out, "  capacity {r}, served {{{}}}: {}", labels.join(", "), cells.join("  ")).unwrap();
    }
    Ok(())
}

/// Marginal prices for every conditioning set of charged agents.
fn wbb_state_table(
    out: &mut String,
    instance: &Arc<Instance>,
    engine: &Engine,
    force: bool,
) -> Result<(), CliError> {
    let n = instance.n_buyers();
    let k = instance.n_sellers();
    let universe: Vec<AgentId> = instance.agents().collect();
    let states = 1usize << (n + k);
    writeln!(out).unwrap();
    if states - 1 > STATE_ROW_LIMIT && !force {
        writeln!(out, "state table omitted ({} further states; pass --states to print)", states - 1).unwrap();
        return Ok(());
    }
    writeln!(out, "marginal prices by conditioning set:").unwrap();
    let pricing = MatroidWbbPricing::new(Arc::clone(instance), *engine)?;
    for mask in 1..states {
        let charged: BTreeSet<AgentId> = universe
            .iter()
            .enumerate()
            .filter(|(bit, _)| mask & (1 << bit) != 0)
            .map(|(_, &agent)| agent)
            .collect();
        if charged.len() == universe.len() {
            continue;
        }
        let labels: Vec<String> = charged.iter().map(|&a| agent_label(a)).collect();
        let mut cells = Vec::new();
        for &agent in &universe {
            if charged.contains(&agent) {
                continue;
            }
            cells.push(format!("{}={}", agent_label(agent), fmt_price(&pricing.price(agent, &charged)?)));
        }
        writeln!(out, "  charged {{{}}}: {}", labels.join(", "), cells.join("  ")).unwrap();
    }
    Ok(())
}
