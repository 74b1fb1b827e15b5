//! Machine-readable reports. Every rational appears as an exact `"p/q"`
//! string next to a nearest-`f64` approximation; all maps are ordered, so a
//! report is byte-for-byte reproducible for a fixed instance, engine, and
//! seed.

use double_auction::rational::{format_rat, rat_int, rat_to_f64};
use double_auction::{
    AgentId, BudgetSummary, Constraint, Engine, EngineMode, Instance, MechanismRun, Parallelism,
    Rat, RatioReport, Role, Valuation,
};
use serde::Serialize;
use std::collections::BTreeMap;

/// One rational, exactly and approximately.
#[derive(Clone, Debug, Serialize)]
pub struct RatValue {
    pub exact: String,
    pub decimal: f64,
}

pub fn rat_value(r: &Rat) -> RatValue {
    RatValue { exact: format_rat(r), decimal: rat_to_f64(r) }
}

/// "b0" / "s3" labels used everywhere agents appear in output.
pub fn agent_label(agent: AgentId) -> String {
    match agent.role {
        Role::Buyer => format!("b{}", agent.index),
        Role::Seller => format!("s{}", agent.index),
    }
}

/// Compact valuation rendering: the scalar itself, or the XOS clauses.
pub fn valuation_text(valuation: &Valuation, items: &[String]) -> String {
    match valuation {
        Valuation::Unit(v) => format_rat(v),
        Valuation::Xos(xos) => {
            let clauses: Vec<String> = xos
                .clauses()
                .iter()
                .map(|clause| {
                    let parts: Vec<String> = clause
                        .iter()
                        .map(|(&item, w)| format!("{}:{}", items[item], format_rat(w)))
                        .collect();
                    format!("{{{}}}", parts.join(", "))
                })
                .collect();
            format!("xos[{}]", clauses.join(" | "))
        }
    }
}

/// One line describing the feasibility constraint.
pub fn constraint_text(constraint: &Constraint) -> String {
    use double_auction::matroid::Matroid;
    match constraint {
        Constraint::Unconstrained => "none".into(),
        Constraint::Knapsack { weights } => {
            let parts: Vec<String> = weights.iter().map(format_rat).collect();
            format!("knapsack(weights=[{}])", parts.join(", "))
        }
        Constraint::Matroid(Matroid::Uniform { rank, .. }) => format!("uniform(rank={rank})"),
        Constraint::Matroid(Matroid::Partition { blocks, capacities }) => {
            format!("partition(blocks={blocks:?}, capacities={capacities:?})")
        }
        Constraint::Matroid(Matroid::Graphic { edges }) => format!("graphic(edges={edges:?})"),
        Constraint::Matroid(Matroid::Explicit { independent, .. }) => {
            format!("explicit({} independent sets)", independent.len())
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct InstanceMeta {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub buyers: usize,
    pub sellers: usize,
    pub items: Vec<String>,
    pub constraint: String,
}

pub fn instance_meta(name: Option<&str>, instance: &Instance) -> InstanceMeta {
    InstanceMeta {
        name: name.map(str::to_owned),
        buyers: instance.n_buyers(),
        sellers: instance.n_sellers(),
        items: instance.items().to_vec(),
        constraint: constraint_text(instance.constraint()),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EngineMeta {
    pub mode: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cap: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub parallelism: &'static str,
}

pub fn engine_meta(engine: &Engine) -> EngineMeta {
    let (mode, cap, samples, seed) = match engine.mode {
        EngineMode::Exact { cap } => ("exact", Some(cap), None, None),
        EngineMode::MonteCarlo { samples, seed } => ("monte-carlo", None, Some(samples), Some(seed)),
    };
    EngineMeta {
        mode,
        cap,
        samples,
        seed,
        parallelism: match engine.parallelism {
            Parallelism::Sequential => "sequential",
            #[cfg(feature = "parallel")]
            Parallelism::Parallel => "parallel",
        },
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BudgetMeta {
    pub runs: usize,
    pub failures: usize,
}

impl From<BudgetSummary> for BudgetMeta {
    fn from(summary: BudgetSummary) -> Self {
        BudgetMeta { runs: summary.runs, failures: summary.failures }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StrategyRow {
    pub label: String,
    pub expected_welfare: RatValue,
    pub ratio: RatValue,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TradeRow {
    pub item: String,
    pub buyer: String,
    pub seller: String,
    pub buyer_pays: RatValue,
    pub seller_receives: RatValue,
}

/// One mechanism execution of the worst strategy: who reported what, who
/// holds what afterwards, and every transfer.
#[derive(Clone, Debug, Serialize)]
pub struct TrialRow {
    pub index: usize,
    /// Exact probability of the profile in exact mode; absent when sampled.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight: Option<RatValue>,
    pub profile: BTreeMap<String, String>,
    pub welfare: RatValue,
    pub allocation: BTreeMap<String, Vec<String>>,
    pub payments: BTreeMap<String, RatValue>,
    pub trades: Vec<TradeRow>,
}

pub fn trial_row(
    instance: &Instance,
    index: usize,
    weight: Option<&Rat>,
    profile: &double_auction::Profile,
    run: &MechanismRun,
    welfare: &Rat,
) -> TrialRow {
    let items = instance.items();
    let mut profile_map = BTreeMap::new();
    for agent in instance.agents() {
        profile_map.insert(agent_label(agent), valuation_text(profile.get(agent), items));
    }
    let allocation = run
        .outcome
        .allocation
        .iter()
        .filter(|(_, bundle)| !bundle.is_empty())
        .map(|(&agent, bundle)| {
            (agent_label(agent), bundle.iter().map(|&i| items[i].clone()).collect())
        })
        .collect();
    let zero = rat_int(0);
    let payments = run
        .outcome
        .payments
        .iter()
        .filter(|(_, paid)| **paid != zero)
        .map(|(&agent, paid)| (agent_label(agent), rat_value(paid)))
        .collect();
    let trades = run
        .outcome
        .ledger
        .iter()
        .map(|record| TradeRow {
            item: items[record.item].clone(),
            buyer: agent_label(record.buyer),
            seller: agent_label(record.seller),
            buyer_pays: rat_value(&record.buyer_pays),
            seller_receives: rat_value(&record.seller_receives),
        })
        .collect();
    TrialRow {
        index,
        weight: weight.map(rat_value),
        profile: profile_map,
        welfare: rat_value(welfare),
        allocation,
        payments,
        trades,
    }
}

/// The full outcome of `da run`.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub schema: &'static str,
    pub instance: InstanceMeta,
    pub mechanism: String,
    pub engine: EngineMeta,
    pub order: String,
    pub exact: bool,
    pub expected_opt: RatValue,
    pub expected_welfare: RatValue,
    pub ratio: RatValue,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    pub worst_strategy: String,
    pub strategies: Vec<StrategyRow>,
    pub budget: BudgetMeta,
    /// Per-profile executions of the worst strategy.
    pub trials: Vec<TrialRow>,
}

pub fn run_report(
    instance_meta: InstanceMeta,
    engine: &Engine,
    order: String,
    ratio: &RatioReport,
    trials: Vec<TrialRow>,
) -> RunReport {
    let strategies = ratio
        .strategies
        .iter()
        .map(|m| StrategyRow {
            label: m.strategy.label(),
            expected_welfare: rat_value(&m.expected_welfare),
            ratio: rat_value(&m.ratio),
            std_error: m.std_error,
        })
        .collect();
    RunReport {
        schema: "double-auction.run/1",
        instance: instance_meta,
        mechanism: ratio.mechanism.name().to_string(),
        engine: engine_meta(engine),
        order,
        exact: ratio.exact,
        expected_opt: rat_value(&ratio.expected_opt),
        expected_welfare: rat_value(&ratio.expected_welfare),
        ratio: rat_value(&ratio.ratio),
        std_error: ratio.std_error,
        worst_strategy: ratio.strategies[ratio.worst].strategy.label(),
        strategies,
        budget: ratio.budget.into(),
        trials,
    }
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    /// Flat table: one row per trial, with the aggregate columns repeated.
    pub fn to_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record([
                "mechanism",
                "order",
                "strategy",
                "trial",
                "weight",
                "welfare",
                "expected_opt",
                "expected_welfare",
                "ratio",
                "trades",
                "buyer_pays_total",
                "seller_receives_total",
            ])
            .expect("csv header");
        for trial in &self.trials {
            let buyer_total: f64 =
                trial.trades.iter().map(|t| t.buyer_pays.decimal).sum();
            let seller_total: f64 =
                trial.trades.iter().map(|t| t.seller_receives.decimal).sum();
            writer
                .write_record([
                    self.mechanism.as_str(),
                    self.order.as_str(),
                    self.worst_strategy.as_str(),
                    &trial.index.to_string(),
                    trial.weight.as_ref().map_or(String::new(), |w| w.exact.clone()).as_str(),
                    trial.welfare.exact.as_str(),
                    self.expected_opt.exact.as_str(),
                    self.expected_welfare.exact.as_str(),
                    self.ratio.exact.as_str(),
                    &trial.trades.len().to_string(),
                    &buyer_total.to_string(),
                    &seller_total.to_string(),
                ])
                .expect("csv row");
        }
        String::from_utf8(writer.into_inner().expect("csv buffer")).expect("csv utf8")
    }
}

// ---------------------------------------------------------------------------
// Verification reports
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SuiteStatus {
    Passed,
    Failed,
    Skipped,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteOutcome {
    pub suite: &'static str,
    pub status: SuiteStatus,
    pub detail: String,
    /// First observed violation, when the suite failed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<serde_json::Value>,
}

/// The full outcome of `da verify`.
#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub schema: &'static str,
    pub instance: InstanceMeta,
    pub mechanism: String,
    pub engine: EngineMeta,
    pub strategy: String,
    pub suites: Vec<SuiteOutcome>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn new(
        instance: InstanceMeta,
        mechanism: String,
        engine: &Engine,
        strategy: String,
        suites: Vec<SuiteOutcome>,
    ) -> Self {
        let passed = suites.iter().all(|s| s.status != SuiteStatus::Failed);
        VerifyReport {
            schema: "double-auction.verify/1",
            instance,
            mechanism,
            engine: engine_meta(engine),
            strategy,
            suites,
            passed,
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }
}
