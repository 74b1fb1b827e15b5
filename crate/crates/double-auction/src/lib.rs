//! Posted-price double auctions for two-sided markets, with the exact
//! verification tooling needed to certify their guarantees empirically.
//!
//! The crate models buyers and sellers with independent, finitely supported
//! value distributions; computes the balanced posted prices each mechanism
//! quotes; runs the mechanisms (bilateral trade, matroid and knapsack double
//! auctions in strongly and weakly budget-balanced variants, and a
//! combinatorial market for heterogeneous items); and ships a harness that
//! audits budget balance, incentive and participation properties,
//! approximation ratios against exact welfare oracles, and the structural
//! price lemmas the guarantees rest on.
//!
//! All bookkeeping is exact rational arithmetic; Monte Carlo estimation is
//! an explicitly marked alternative mode. With the default `parallel`
//! feature the heavy loops run on rayon; results are bit-identical to the
//! sequential fallback.

pub mod corpus;
pub mod engine;
pub mod harness;
pub mod market;
pub mod matroid;
pub mod mechanism;
pub mod oracle;
pub mod pricing;
pub mod rational;

pub use engine::{Engine, EngineError, EngineMode, Estimate, Parallelism, DEFAULT_EXACT_CAP};
pub use harness::{
    audit_budget, deviation_test, dsic_report, expected_ratio, ir_test, lemma_suite,
    lemma_suite_with_scale, run_audits, BudgetAudit, BudgetSummary, BudgetViolation,
    DeviationReport, HarnessError, IrViolation, LemmaOutcome, LemmaReport, OrderPolicy,
    RatioReport, RunAuditReport, Strategy, StrategyMeasure, TelescopingRow, LEMMA_NAMES,
};
pub use market::{
    AgentId, Constraint, Distribution, Instance, ItemId, MarketError, Outcome, OutcomeBuilder,
    Profile, Role, TradeRecord, Valuation, XosValuation,
};
pub use mechanism::{
    Adversary, CanonicalOrder, ChoiceContext, ChoiceKind, FixedOrder, GreedyAdversary,
    KnapsackBranch, Mechanism, MechanismError, MechanismRun, OrderError, Prepared, PriceTable,
    RunLog, ScriptedAdversary, SeededRandom, StrategyScript,
};
pub use pricing::{BudgetRegime, Price, PricingError};
pub use rational::Rat;
