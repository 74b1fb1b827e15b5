//! Verification and measurement.
//!
//! Everything here consumes a [`Prepared`] mechanism and reports on it:
//! ledger audits against the budget regime, expected approximation ratios
//! under configurable arrival-order policies (including exhaustive
//! enumeration of adversarial strategies), incentive and participation
//! tests over finite misreport grids, and the exact structural properties
//! of the balanced prices (monotonicity, rank bounds, price sums, and the
//! telescoping identity behind the weak-budget-balance analysis).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use num::{One, Zero};

use crate::engine::{
    Engine, EngineError, EngineMode, ProductSpace, ProfileSpace, DEFAULT_EXACT_CAP,
};
use crate::market::{
    utility, welfare, AgentId, Constraint, Distribution, Instance, ItemId, MarketError, Outcome,
    Profile, Role, Valuation, XosValuation,
};
use crate::matroid::Matroid;
use crate::mechanism::{
    Adversary, CanonicalOrder, ChoiceKind, FixedOrder, GreedyAdversary, Mechanism, MechanismError,
    OrderError, Prepared, ScriptedAdversary, SeededRandom, StrategyScript,
};
use crate::oracle;
use crate::pricing::{BudgetRegime, MatroidSbbPricing, MatroidWbbPricing, Price, PricingError};
use crate::rational::{rat, rat_int, rat_to_f64, rat_zero, Rat};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Step distance used when probing misreports just across a posted price.
fn probe_offset() -> Rat {
    rat(1, 1000)
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Pricing(#[from] PricingError),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Order(#[from] OrderError),
    #[error("strategy enumeration exceeded the cap of {0} mechanism runs")]
    StrategyCapExceeded(usize),
    #[error("exhaustive order enumeration requires the exact engine")]
    ExhaustiveNeedsExact,
    #[error("property checks enumerate subsets of {0} agents, above the supported 16")]
    TooManyAgents(usize),
}

// ---------------------------------------------------------------------------
// Budget audits
// ---------------------------------------------------------------------------

/// One defect found in a trade ledger.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BudgetViolation {
    /// Strong regime: the buyer's payment differs from the seller's receipt.
    Imbalanced { record: usize, buyer_pays: Rat, seller_receives: Rat },
    /// Weak regime: the buyer's payment does not cover the seller's receipt.
    Uncovered { record: usize, buyer_pays: Rat, seller_receives: Rat },
    /// A transfer is negative in either direction.
    NegativeTransfer { record: usize },
    /// The same item appears in two trade records.
    DuplicateItem { item: ItemId },
}

impl fmt::Display for BudgetViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BudgetViolation::Imbalanced { record, buyer_pays, seller_receives } => write!(
                f,
                "record {record}: buyer pays {buyer_pays} but seller receives {seller_receives}"
            ),
            BudgetViolation::Uncovered { record, buyer_pays, seller_receives } => write!(
                f,
                "record {record}: buyer payment {buyer_pays} below seller receipt {seller_receives}"
            ),
            BudgetViolation::NegativeTransfer { record } => {
                write!(f, "record {record}: negative transfer")
            }
            BudgetViolation::DuplicateItem { item } => {
                write!(f, "item {item} traded more than once")
            }
        }
    }
}

/// Result of [`audit_budget`].
#[derive(Clone, Debug)]
pub struct BudgetAudit {
    pub regime: BudgetRegime,
    pub records: usize,
    pub violations: Vec<BudgetViolation>,
}

impl BudgetAudit {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every trade record against the budget regime: equal transfers in
/// the strong regime, covering transfers in the weak one, never negative,
/// and each item traded at most once.
pub fn audit_budget(outcome: &Outcome, regime: BudgetRegime) -> BudgetAudit {
    let mut violations = Vec::new();
    let mut traded = BTreeSet::new();
    for (record, trade) in outcome.ledger.iter().enumerate() {
        if !traded.insert(trade.item) {
            violations.push(BudgetViolation::DuplicateItem { item: trade.item });
        }
        if trade.buyer_pays < rat_zero() || trade.seller_receives < rat_zero() {
            violations.push(BudgetViolation::NegativeTransfer { record });
        }
        match regime {
            BudgetRegime::Strong => {
                if trade.buyer_pays != trade.seller_receives {
                    violations.push(BudgetViolation::Imbalanced {
                        record,
                        buyer_pays: trade.buyer_pays.clone(),
                        seller_receives: trade.seller_receives.clone(),
                    });
                }
            }
            BudgetRegime::Weak => {
                if trade.buyer_pays < trade.seller_receives {
                    violations.push(BudgetViolation::Uncovered {
                        record,
                        buyer_pays: trade.buyer_pays.clone(),
                        seller_receives: trade.seller_receives.clone(),
                    });
                }
            }
        }
    }
    BudgetAudit { regime, records: outcome.ledger.len(), violations }
}

// ---------------------------------------------------------------------------
// Arrival strategies and order policies
// ---------------------------------------------------------------------------

/// One resolvable way of driving a mechanism's choice points.
#[derive(Clone, Debug)]
pub enum Strategy {
    /// Lowest candidate id at every choice point.
    Canonical,
    /// Candidates preferred by their position in an explicit sequence.
    Fixed(Vec<AgentId>),
    /// Seeded uniform choices; reproducible per seed.
    Seeded(u64),
    /// Adaptive spoiler minimizing one-step welfare.
    Greedy,
    /// A fixed positional script over the choice points.
    Script(StrategyScript),
}

impl Strategy {
    /// A short, stable name for reports.
    pub fn label(&self) -> String {
        match self {
            Strategy::Canonical => "canonical".into(),
            Strategy::Fixed(_) => "fixed-order".into(),
            Strategy::Seeded(seed) => format!("random:{seed}"),
            Strategy::Greedy => "greedy".into(),
            Strategy::Script(script) => {
                if script.is_canonical() {
                    "canonical".into()
                } else {
                    format!("script:{script}")
                }
            }
        }
    }

    /// A fresh adversary playing this strategy on `instance`.
    pub fn adversary(&self, instance: &Instance) -> Result<Box<dyn Adversary>, OrderError> {
        Ok(match self {
            Strategy::Canonical => Box::new(CanonicalOrder),
            Strategy::Fixed(sequence) => Box::new(FixedOrder::new(sequence, instance.agents())?),
            Strategy::Seeded(seed) => Box::new(SeededRandom::new(*seed)),
            Strategy::Greedy => Box::new(GreedyAdversary),
            Strategy::Script(script) => Box::new(ScriptedAdversary::new(script.clone())),
        })
    }
}

/// How arrival orders are chosen when measuring a mechanism. Reported
/// guarantees take the minimum over every strategy the policy evaluates.
#[derive(Clone, Debug)]
pub enum OrderPolicy {
    /// The single canonical order.
    Canonical,
    /// One explicit agent sequence.
    Fixed(Vec<AgentId>),
    /// Canonical, the greedy spoiler, and `trials` seeded random orders.
    Random { seed: u64, trials: usize },
    /// The greedy spoiler alone.
    Greedy,
    /// Every deterministic strategy over buyer-arrival and seller-match
    /// choices, discovered by replay, plus the greedy spoiler. Fails above
    /// `cap` discovery runs; requires the exact engine.
    Exhaustive { cap: usize },
}

/// Default cap on mechanism runs spent discovering strategies.
pub const DEFAULT_STRATEGY_CAP: usize = 200_000;

impl OrderPolicy {
    pub fn exhaustive_default() -> Self {
        OrderPolicy::Exhaustive { cap: DEFAULT_STRATEGY_CAP }
    }
}

/// The choice kinds the exhaustive policy branches on. Seller arrivals stay
/// canonical: the adversarial guarantees quantify over who shows up on the
/// demand side and which open seller serves them.
const ADVERSARIAL_KINDS: [ChoiceKind; 2] = [ChoiceKind::BuyerArrival, ChoiceKind::SellerMatch];

// ---------------------------------------------------------------------------
// Expected ratio
// ---------------------------------------------------------------------------

/// Expected welfare and ratio achieved by one strategy.
#[derive(Clone, Debug)]
pub struct StrategyMeasure {
    pub strategy: Strategy,
    pub expected_welfare: Rat,
    pub ratio: Rat,
    pub std_error: Option<f64>,
}

/// Budget audits folded over every run a measurement performed.
#[derive(Clone, Copy, Debug, Default)]
pub struct BudgetSummary {
    pub runs: usize,
    pub failures: usize,
}

impl BudgetSummary {
    pub fn all_passed(&self) -> bool {
        self.failures == 0
    }
}

/// Approximation-ratio measurement of one prepared mechanism under one
/// order policy. `ratio` is the minimum over the evaluated strategies; a
/// market whose optimum is zero reports ratio 1 by convention.
#[derive(Clone, Debug)]
pub struct RatioReport {
    pub mechanism: Mechanism,
    pub expected_opt: Rat,
    pub expected_welfare: Rat,
    pub ratio: Rat,
    /// Index into `strategies` of the worst strategy.
    pub worst: usize,
    pub exact: bool,
    pub samples: Option<usize>,
    pub std_error: Option<f64>,
    pub strategies: Vec<StrategyMeasure>,
    pub budget: BudgetSummary,
}

fn ratio_of(welfare: &Rat, opt: &Rat) -> Rat {
    if opt.is_zero() {
        Rat::one()
    } else {
        welfare / opt
    }
}

/// Profiles a measurement averages over: the enumerated support with exact
/// probabilities, or seeded samples with uniform weight.
enum ProfileSet {
    Exact(Vec<(Profile, Rat)>),
    Sampled(Vec<Profile>),
}

impl ProfileSet {
    fn len(&self) -> usize {
        match self {
            ProfileSet::Exact(rows) => rows.len(),
            ProfileSet::Sampled(rows) => rows.len(),
        }
    }

    fn profiles(&self) -> Vec<&Profile> {
        match self {
            ProfileSet::Exact(rows) => rows.iter().map(|(profile, _)| profile).collect(),
            ProfileSet::Sampled(rows) => rows.iter().collect(),
        }
    }
}

fn enumerate_profiles(prepared: &Prepared) -> Result<ProfileSet, HarnessError> {
    let instance = prepared.instance();
    match prepared.engine().mode {
        EngineMode::Exact { cap } => {
            let space = ProfileSpace::new(instance, cap)?;
            Ok(ProfileSet::Exact((0..space.len()).map(|at| space.decode(at)).collect()))
        }
        EngineMode::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(EngineError::NoSamples.into());
            }
            Ok(ProfileSet::Sampled(
                (0..samples)
                    .map(|t| instance.sample_profile(seed.wrapping_add(t as u64)))
                    .collect(),
            ))
        }
    }
}

/// Maps `f` over `items`, in parallel when the engine asks for it. Output
/// order matches input order either way.
fn map_collect<T, U, F>(engine: &Engine, items: Vec<T>, f: F) -> Result<Vec<U>, HarnessError>
where
    T: Send,
    U: Send,
    F: Fn(T) -> Result<U, HarnessError> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if engine.parallelism == crate::engine::Parallelism::Parallel {
        return items.into_par_iter().map(f).collect();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = engine;
    items.into_iter().map(f).collect()
}

fn measure_strategy(
    prepared: &Prepared,
    strategy: &Strategy,
    profiles: &ProfileSet,
    expected_opt: &Rat,
) -> Result<(StrategyMeasure, BudgetSummary), HarnessError> {
    let instance = prepared.instance();
    let regime = prepared.budget_requirement();
    let run_once = |profile: &Profile| -> Result<(Rat, bool), HarnessError> {
        let mut adversary = strategy.adversary(instance)?;
        let run = prepared.run(profile, adversary.as_mut())?;
        let passed = audit_budget(&run.outcome, regime).passed();
        Ok((welfare(instance, &run.outcome, profile), passed))
    };

    let mut budget = BudgetSummary::default();
    match profiles {
        ProfileSet::Exact(rows) => {
            let results = map_collect(prepared.engine(), rows.iter().collect(), |(profile, prob)| {
                let (w, passed) = run_once(profile)?;
                Ok((prob * w, passed))
            })?;
            let mut total = rat_zero();
            for (weighted, passed) in results {
                total += weighted;
                budget.runs += 1;
                if !passed {
                    budget.failures += 1;
                }
            }
            let ratio = ratio_of(&total, expected_opt);
            Ok((
                StrategyMeasure {
                    strategy: strategy.clone(),
                    expected_welfare: total,
                    ratio,
                    std_error: None,
                },
                budget,
            ))
        }
        ProfileSet::Sampled(rows) => {
            let results = map_collect(prepared.engine(), rows.iter().collect(), |profile| {
                run_once(profile)
            })?;
            let n = results.len();
            let mut total = rat_zero();
            let mut draws = Vec::with_capacity(n);
            for (w, passed) in results {
                draws.push(rat_to_f64(&w));
                total += w;
                budget.runs += 1;
                if !passed {
                    budget.failures += 1;
                }
            }
            let mean = total / rat_int(n as i64);
            let std_error = if n >= 2 {
                let m = rat_to_f64(&mean);
                let var: f64 = draws.iter().map(|w| (w - m) * (w - m)).sum::<f64>()
                    / ((n - 1) as f64);
                Some((var / n as f64).sqrt())
            } else {
                None
            };
            let ratio = ratio_of(&mean, expected_opt);
            Ok((
                StrategyMeasure {
                    strategy: strategy.clone(),
                    expected_welfare: mean,
                    ratio,
                    std_error,
                },
                budget,
            ))
        }
    }
}

/// Every deterministic strategy over the adversarial choice kinds that is
/// reachable on some profile in `rows`.
///
/// Discovery replays scripts: running one records the choices actually
/// taken, and for every visited choice point one sibling script per untaken
/// option is queued (the recorded prefix plus that option). Induction on
/// the first deviation point shows every reachable path is generated.
/// Forced moves never reach the adversary, so scripts only spend positions
/// on real decisions and equal behaviors collapse to one representative.
fn enumerate_scripts(
    prepared: &Prepared,
    rows: &[(Profile, Rat)],
    cap: usize,
) -> Result<BTreeSet<StrategyScript>, HarnessError> {
    let mut discovered = BTreeSet::new();
    let mut runs = 0usize;
    for (profile, _) in rows {
        let mut frontier = vec![StrategyScript::empty()];
        let mut seen = BTreeSet::new();
        while let Some(script) = frontier.pop() {
            runs += 1;
            if runs > cap {
                return Err(HarnessError::StrategyCapExceeded(cap));
            }
            let mut adversary = ScriptedAdversary::new(script);
            prepared.run(profile, &mut adversary)?;
            let played = adversary.played_script();
            if !seen.insert(played.clone()) {
                continue;
            }
            for (at, visit) in adversary.visited.iter().enumerate() {
                if !ADVERSARIAL_KINDS.contains(&visit.kind) {
                    continue;
                }
                for option in 0..visit.arity {
                    if option == visit.taken {
                        continue;
                    }
                    let mut fork = StrategyScript::empty();
                    for earlier in &adversary.visited[..at] {
                        fork = fork.with_choice(earlier.kind, earlier.depth, earlier.taken);
                    }
                    frontier.push(fork.with_choice(visit.kind, visit.depth, option));
                }
            }
            discovered.insert(played);
        }
    }
    Ok(discovered)
}

/// Measures the expected approximation ratio of `prepared` under `policy`,
/// auditing the budget ledger of every run on the way.
pub fn expected_ratio(prepared: &Prepared, policy: &OrderPolicy) -> Result<RatioReport, HarnessError> {
    let profiles = enumerate_profiles(prepared)?;
    let expected_opt = prepared.expected_opt()?;

    let strategies: Vec<Strategy> = match policy {
        OrderPolicy::Canonical => vec![Strategy::Canonical],
        OrderPolicy::Fixed(sequence) => vec![Strategy::Fixed(sequence.clone())],
        OrderPolicy::Greedy => vec![Strategy::Greedy],
        OrderPolicy::Random { seed, trials } => {
            let mut set = vec![Strategy::Canonical, Strategy::Greedy];
            set.extend((0..*trials).map(|t| Strategy::Seeded(seed.wrapping_add(t as u64))));
            set
        }
        OrderPolicy::Exhaustive { cap } => {
            let rows = match &profiles {
                ProfileSet::Exact(rows) => rows,
                ProfileSet::Sampled(_) => return Err(HarnessError::ExhaustiveNeedsExact),
            };
            let scripts = enumerate_scripts(prepared, rows, *cap)?;
            let mut set: Vec<Strategy> = scripts.into_iter().map(Strategy::Script).collect();
            set.push(Strategy::Greedy);
            set
        }
    };

    let measured = map_collect(prepared.engine(), strategies.iter().collect(), |strategy| {
        measure_strategy(prepared, strategy, &profiles, &expected_opt)
    })?;

    let mut budget = BudgetSummary::default();
    let mut strategies = Vec::with_capacity(measured.len());
    for (measure, fold) in measured {
        budget.runs += fold.runs;
        budget.failures += fold.failures;
        strategies.push(measure);
    }
    // First strategy on ties, so reports name the earliest witness.
    let mut worst = 0;
    for at in 1..strategies.len() {
        if strategies[at].ratio < strategies[worst].ratio {
            worst = at;
        }
    }

    let exact = prepared.engine().is_exact();
    Ok(RatioReport {
        mechanism: prepared.mechanism(),
        expected_opt,
        expected_welfare: strategies[worst].expected_welfare.clone(),
        ratio: strategies[worst].ratio.clone(),
        worst,
        exact,
        samples: if exact { None } else { Some(profiles.len()) },
        std_error: strategies[worst].std_error,
        strategies,
        budget,
    })
}

// ---------------------------------------------------------------------------
// Per-run audits: budget, offer monotonicity, telescoping identity
// ---------------------------------------------------------------------------

/// The two sides of the charged-price identity of one weak-budget-balance
/// run: total price consumed by the conditioning set, and half the drop of
/// expected optimal welfare it caused. Equal in exact mode.
#[derive(Clone, Debug)]
pub struct TelescopingRow {
    pub profile: usize,
    pub charged_total: Rat,
    pub price_gap: Rat,
}

impl TelescopingRow {
    pub fn holds(&self) -> bool {
        self.charged_total == self.price_gap
    }
}

/// Per-run audit results across every profile of the instance.
#[derive(Clone, Debug, Default)]
pub struct RunAuditReport {
    pub runs: usize,
    pub budget: BudgetSummary,
    /// Budget defects, tagged with the profile index they occurred on.
    pub budget_violations: Vec<(usize, BudgetViolation)>,
    /// Sellers whose successive offers rose within one run.
    pub offer_violations: Vec<(usize, String)>,
    pub telescoping: Vec<TelescopingRow>,
}

impl RunAuditReport {
    pub fn budget_passed(&self) -> bool {
        self.budget_violations.is_empty()
    }

    pub fn offers_monotone(&self) -> bool {
        self.offer_violations.is_empty()
    }

    pub fn telescoping_exact(&self) -> bool {
        self.telescoping.iter().all(TelescopingRow::holds)
    }
}

/// Runs the mechanism once per profile under `strategy` and audits each
/// run: ledger conformance, non-increasing successive seller offers (the
/// matroid mechanisms only lower a seller's quote over a run), and the
/// charged-price identity where the mechanism maintains one.
pub fn run_audits(prepared: &Prepared, strategy: &Strategy) -> Result<RunAuditReport, HarnessError> {
    let instance = prepared.instance();
    let regime = prepared.budget_requirement();
    let check_offers =
        matches!(prepared.mechanism(), Mechanism::MatroidSbb | Mechanism::MatroidWbb);
    let mut report = RunAuditReport::default();

    let profile_set = enumerate_profiles(prepared)?;
    for (at, profile) in profile_set.profiles().into_iter().enumerate() {
        let mut adversary = strategy.adversary(instance)?;
        let run = prepared.run(profile, adversary.as_mut())?;
        report.runs += 1;
        report.budget.runs += 1;

        let audit = audit_budget(&run.outcome, regime);
        if !audit.passed() {
            report.budget.failures += 1;
            report.budget_violations.extend(audit.violations.into_iter().map(|v| (at, v)));
        }

        if check_offers {
            let mut last: BTreeMap<AgentId, Rat> = BTreeMap::new();
            for (agent, price) in &run.log.offers {
                if agent.role != Role::Seller {
                    continue;
                }
                if let Price::Finite(p) = price {
                    if let Some(previous) = last.get(agent) {
                        if p > previous {
                            report.offer_violations.push((
                                at,
                                format!("offer to {agent} rose from {previous} to {p}"),
                            ));
                        }
                    }
                    last.insert(*agent, p.clone());
                }
            }
        }

        if let Some((charged_total, price_gap)) = prepared.telescoping_sides(&run.log)? {
            report.telescoping.push(TelescopingRow { profile: at, charged_total, price_gap });
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Incentive and participation tests
// ---------------------------------------------------------------------------

/// Best misreport found for one agent on one true profile.
#[derive(Clone, Debug)]
pub struct DeviationReport {
    pub agent: AgentId,
    pub profile: Profile,
    pub truthful_utility: Rat,
    pub best_report: Valuation,
    pub best_utility: Rat,
    /// Truthful utility minus the best deviating utility; negative means a
    /// profitable misreport exists.
    pub margin: Rat,
}

impl DeviationReport {
    pub fn passed(&self) -> bool {
        self.margin >= rat_zero()
    }
}

/// Misreport candidates for a scalar agent: zero, every support value, and
/// every price the agent was quoted — exactly, and one probe step to either
/// side. Posted-price mechanisms change behavior only at such thresholds.
fn scalar_probes(distribution: &Distribution, prices: &BTreeSet<Rat>) -> Vec<Valuation> {
    let offset = probe_offset();
    let mut values: BTreeSet<Rat> = BTreeSet::new();
    values.insert(rat_zero());
    for (valuation, _) in distribution.support() {
        if let Some(v) = valuation.unit() {
            values.insert(v.clone());
        }
    }
    for price in prices {
        values.insert(price.clone());
        values.insert(price + &offset);
        let below = price - &offset;
        if below >= rat_zero() {
            values.insert(below);
        }
    }
    values.into_iter().map(Valuation::Unit).collect()
}

/// Misreport candidates for a bundle-valued agent: the zero valuation,
/// every support valuation, and each support valuation with one item's
/// weight pinned (in every clause) to a quoted price or one probe step to
/// either side of it.
fn xos_probes(
    n_items: usize,
    distribution: &Distribution,
    prices: &BTreeSet<Rat>,
) -> Vec<Valuation> {
    let offset = probe_offset();
    let mut keys: BTreeSet<Vec<BTreeMap<ItemId, Rat>>> = BTreeSet::new();
    keys.insert(vec![BTreeMap::new()]);
    let bases: Vec<&XosValuation> = distribution
        .support()
        .iter()
        .filter_map(|(valuation, _)| match valuation {
            Valuation::Xos(x) => Some(x),
            Valuation::Unit(_) => None,
        })
        .collect();
    for base in bases {
        keys.insert(base.clauses().to_vec());
        for item in 0..n_items {
            for price in prices {
                let mut pins = vec![price.clone(), price + &offset];
                let below = price - &offset;
                if below >= rat_zero() {
                    pins.push(below);
                }
                for pin in pins {
                    let variant: Vec<BTreeMap<ItemId, Rat>> = base
                        .clauses()
                        .iter()
                        .map(|clause| {
                            let mut clause = clause.clone();
                            clause.insert(item, pin.clone());
                            clause
                        })
                        .collect();
                    keys.insert(variant);
                }
            }
        }
    }
    keys.into_iter()
        .map(|clauses| {
            Valuation::Xos(XosValuation::new(clauses).expect("built from valid clauses"))
        })
        .collect()
}

/// Tests whether `agent` can gain by misreporting, one row per true
/// profile. Runs the mechanism truthfully on every profile first (under
/// `strategy`), collects every price quoted to the agent, and then replays
/// each profile once per candidate misreport, comparing utilities at the
/// agent's true valuation.
pub fn deviation_test(
    prepared: &Prepared,
    agent: AgentId,
    strategy: &Strategy,
) -> Result<Vec<DeviationReport>, HarnessError> {
    let instance = prepared.instance();
    let profiles = enumerate_profiles(prepared)?;
    let profiles = profiles.profiles();

    let truthful: Vec<(Rat, Vec<Rat>)> =
        map_collect(prepared.engine(), profiles.clone(), |profile| {
            let mut adversary = strategy.adversary(instance)?;
            let run = prepared.run(profile, adversary.as_mut())?;
            let quoted = run
                .log
                .offers_to(agent)
                .filter_map(Price::finite)
                .cloned()
                .collect();
            Ok((utility(instance, agent, &run.outcome, profile), quoted))
        })?;

    let mut prices: BTreeSet<Rat> = BTreeSet::new();
    for (_, quoted) in &truthful {
        prices.extend(quoted.iter().cloned());
    }
    let distribution = instance.distribution(agent);
    let probes = if distribution.is_unit() {
        scalar_probes(distribution, &prices)
    } else {
        xos_probes(instance.n_items(), distribution, &prices)
    };

    let indexed: Vec<(usize, &Profile)> = profiles.into_iter().enumerate().collect();
    map_collect(prepared.engine(), indexed, |(at, profile)| {
        let truthful_utility = truthful[at].0.clone();
        let mut best_report = profile.get(agent).clone();
        let mut best_utility = truthful_utility.clone();
        for probe in &probes {
            if probe == profile.get(agent) {
                continue;
            }
            let mut misreported = profile.clone();
            misreported.set(agent, probe.clone());
            let mut adversary = strategy.adversary(instance)?;
            let run = prepared.run(&misreported, adversary.as_mut())?;
            let deviating = utility(instance, agent, &run.outcome, profile);
            if deviating > best_utility {
                best_utility = deviating;
                best_report = probe.clone();
            }
        }
        let margin = &truthful_utility - &best_utility;
        Ok(DeviationReport {
            agent,
            profile: profile.clone(),
            truthful_utility,
            best_report,
            best_utility,
            margin,
        })
    })
}

/// [`deviation_test`] for every agent of the instance.
pub fn dsic_report(
    prepared: &Prepared,
    strategy: &Strategy,
) -> Result<Vec<DeviationReport>, HarnessError> {
    let agents: Vec<AgentId> = prepared.instance().agents().collect();
    let mut rows = Vec::new();
    for agent in agents {
        rows.extend(deviation_test(prepared, agent, strategy)?);
    }
    Ok(rows)
}

/// One agent ending a run below their walk-away utility.
#[derive(Clone, Debug)]
pub struct IrViolation {
    pub agent: AgentId,
    pub profile: Profile,
    pub utility: Rat,
    /// Zero for buyers; the value of the kept endowment for sellers.
    pub baseline: Rat,
}

/// Checks individual rationality on every profile under `strategy`: buyers
/// never end below zero, sellers never below the value of keeping their
/// endowment.
pub fn ir_test(prepared: &Prepared, strategy: &Strategy) -> Result<Vec<IrViolation>, HarnessError> {
    let instance = prepared.instance();
    let agents: Vec<AgentId> = instance.agents().collect();
    let mut violations = Vec::new();
    let profile_set = enumerate_profiles(prepared)?;
    for profile in profile_set.profiles() {
        let mut adversary = strategy.adversary(instance)?;
        let run = prepared.run(profile, adversary.as_mut())?;
        for &agent in &agents {
            let baseline = match agent.role {
                Role::Buyer => rat_zero(),
                Role::Seller => {
                    instance.evaluate(agent, instance.endowment(agent.index), profile)?
                }
            };
            let got = utility(instance, agent, &run.outcome, profile);
            if got < baseline {
                violations.push(IrViolation {
                    agent,
                    profile: profile.clone(),
                    utility: got,
                    baseline,
                });
            }
        }
    }
    Ok(violations)
}

// ---------------------------------------------------------------------------
// Balanced-price property suite
// ---------------------------------------------------------------------------

/// The five structural checks of [`lemma_suite`], in order.
pub const LEMMA_NAMES: [&str; 5] = [
    "trade-price-monotone",
    "best-offer-monotone",
    "rank-contraction-bound",
    "price-sum-bound",
    "conditioned-price-monotone",
];

#[derive(Clone, Debug)]
pub struct LemmaOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// First violation found, if any.
    pub detail: Option<String>,
}

#[derive(Clone, Debug)]
pub struct LemmaReport {
    pub outcomes: Vec<LemmaOutcome>,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|outcome| outcome.passed)
    }

    pub fn failed_names(&self) -> Vec<&'static str> {
        self.outcomes.iter().filter(|o| !o.passed).map(|o| o.name).collect()
    }
}

fn matroid_of(instance: &Instance) -> Result<&Matroid, HarnessError> {
    match instance.constraint() {
        Constraint::Matroid(matroid) => Ok(matroid),
        _ => Err(PricingError::NotMatroid.into()),
    }
}

fn exact_cap(engine: &Engine) -> usize {
    match engine.mode {
        EngineMode::Exact { cap } => cap,
        EngineMode::MonteCarlo { .. } => DEFAULT_EXACT_CAP,
    }
}

fn buyer_set_of(mask: u32) -> BTreeSet<usize> {
    (0..32).filter(|b| mask & (1 << b) != 0).collect()
}

fn agent_set_of(mask: u32, n_buyers: usize) -> BTreeSet<AgentId> {
    (0..32)
        .filter(|b| mask & (1 << b) != 0)
        .map(|b| {
            if (b as usize) < n_buyers {
                AgentId::buyer(b as usize)
            } else {
                AgentId::seller(b as usize - n_buyers)
            }
        })
        .collect()
}

/// Iterates `f` over every submask of `mask` (including `mask` and 0).
fn for_each_submask(mask: u32, mut f: impl FnMut(u32) -> Option<String>) -> Option<String> {
    let mut sub = mask;
    loop {
        if let Some(detail) = f(sub) {
            return Some(detail);
        }
        if sub == 0 {
            return None;
        }
        sub = (sub - 1) & mask;
    }
}

/// Runs the five structural checks of the balanced prices on a matroid
/// instance, exhaustively over all syntactically valid states, in exact
/// arithmetic.
pub fn lemma_suite(instance: &Arc<Instance>, engine: &Engine) -> Result<LemmaReport, HarnessError> {
    lemma_suite_with_scale(instance, engine, &rat_int(1))
}

/// [`lemma_suite`] with the realized thresholds of the price-sum check
/// multiplied by `threshold_scale`. Scale 1 is the shipped pricing; any
/// larger scale breaks the balance the check certifies, which is how the
/// suite's sensitivity is demonstrated.
pub fn lemma_suite_with_scale(
    instance: &Arc<Instance>,
    engine: &Engine,
    threshold_scale: &Rat,
) -> Result<LemmaReport, HarnessError> {
    let agents = instance.n_buyers() + instance.n_sellers();
    if agents > 16 {
        return Err(HarnessError::TooManyAgents(agents));
    }
    let sbb = MatroidSbbPricing::new(instance.clone(), *engine)?;
    let wbb = MatroidWbbPricing::new(instance.clone(), *engine)?;

    let checks: [(usize, Result<Option<String>, HarnessError>); 5] = [
        (0, check_trade_price_monotone(&sbb)),
        (1, check_best_offer_monotone(&sbb)),
        (2, check_rank_bound(&sbb)),
        (3, check_price_sum(&wbb, threshold_scale)),
        (4, check_conditioned_price_monotone(&wbb)),
    ];
    let mut outcomes = Vec::with_capacity(5);
    for (at, check) in checks {
        let detail = check?;
        outcomes.push(LemmaOutcome {
            name: LEMMA_NAMES[at],
            passed: detail.is_none(),
            detail,
        });
    }
    Ok(LemmaReport { outcomes })
}

/// Independent buyer sets of the instance's matroid, as bit masks.
fn independent_buyer_masks(instance: &Instance) -> Result<Vec<u32>, HarnessError> {
    let matroid = matroid_of(instance)?;
    Ok((0u32..1 << instance.n_buyers())
        .filter(|&mask| matroid.is_independent(&buyer_set_of(mask)))
        .collect())
}

/// Quotes for a fixed buyer-seller pair never drop as the served set grows
/// or the remaining capacity shrinks (a blocked quote counts as infinite).
fn check_trade_price_monotone(
    pricing: &MatroidSbbPricing,
) -> Result<Option<String>, HarnessError> {
    let instance = pricing.instance();
    let n = instance.n_buyers();
    let k = instance.n_sellers();
    for &big_mask in &independent_buyer_masks(instance)? {
        let big = buyer_set_of(big_mask);
        let found = for_each_submask(big_mask, |small_mask| {
            let small = buyer_set_of(small_mask);
            for r_small in 0..=k {
                for r_big in 0..=r_small {
                    for buyer in (0..n).filter(|b| !big.contains(b)) {
                        for seller in 0..k {
                            let loose = match pricing.trade_price(buyer, seller, &small, r_small) {
                                Ok(p) => p,
                                Err(e) => return Some(format!("pricing failed: {e}")),
                            };
                            if let Price::Finite(p) = &loose {
                                if p < &rat_zero() {
                                    return Some(format!(
                                        "negative quote {p} for buyer {buyer} at {small:?}"
                                    ));
                                }
                            }
                            let tight = match pricing.trade_price(buyer, seller, &big, r_big) {
                                Ok(p) => p,
                                Err(e) => return Some(format!("pricing failed: {e}")),
                            };
                            if loose > tight {
                                return Some(format!(
                                    "quote for buyer {buyer}, seller {seller} dropped from \
                                     {loose} at (served {small:?}, capacity {r_small}) to {tight} \
                                     at (served {big:?}, capacity {r_big})"
                                ));
                            }
                        }
                    }
                }
            }
            None
        });
        if let Some(detail) = found {
            return Ok(Some(detail));
        }
    }
    Ok(None)
}

/// A buyer's cheapest available quote (minimum over a set of candidate
/// sellers) never drops when the served set grows, the capacity shrinks,
/// or a candidate seller disappears. Checked over single steps; chains
/// compose.
fn check_best_offer_monotone(pricing: &MatroidSbbPricing) -> Result<Option<String>, HarnessError> {
    let instance = pricing.instance();
    let n = instance.n_buyers();
    let k = instance.n_sellers();
    let matroid = matroid_of(instance)?;

    let best = |buyer: usize,
                served: &BTreeSet<usize>,
                capacity: usize,
                sellers: u32|
     -> Result<Price, HarnessError> {
        let mut low = Price::Blocked;
        for seller in (0..k).filter(|j| sellers & (1 << j) != 0) {
            let quote = pricing.trade_price(buyer, seller, served, capacity)?;
            if quote < low {
                low = quote;
            }
        }
        Ok(low)
    };

    for &mask in &independent_buyer_masks(instance)? {
        let served = buyer_set_of(mask);
        for capacity in 0..=k {
            for buyer in (0..n).filter(|b| !served.contains(b)) {
                for sellers in 1u32..1 << k {
                    let base = best(buyer, &served, capacity, sellers)?;
                    for grow in (0..n).filter(|b| *b != buyer && !served.contains(b)) {
                        let mut grown = served.clone();
                        grown.insert(grow);
                        if !matroid.is_independent(&grown) {
                            continue;
                        }
                        if best(buyer, &grown, capacity, sellers)? < base {
                            return Ok(Some(format!(
                                "best offer to buyer {buyer} fell after serving buyer {grow} \
                                 on top of {served:?}"
                            )));
                        }
                    }
                    if capacity > 0 && best(buyer, &served, capacity - 1, sellers)? < base {
                        return Ok(Some(format!(
                            "best offer to buyer {buyer} fell when capacity dropped to {}",
                            capacity - 1
                        )));
                    }
                    for gone in (0..k).filter(|j| sellers & (1 << j) != 0) {
                        let fewer = sellers & !(1 << gone);
                        if fewer == 0 {
                            continue;
                        }
                        if best(buyer, &served, capacity, fewer)? < base {
                            return Ok(Some(format!(
                                "best offer to buyer {buyer} fell after seller {gone} left"
                            )));
                        }
                    }
                }
            }
        }
    }
    Ok(None)
}

/// Serving a buyer costs at least as much optimal welfare as losing one
/// capacity slot: the remaining optimum after adding the buyer to the
/// served set is at most the remaining optimum with one item fewer.
fn check_rank_bound(pricing: &MatroidSbbPricing) -> Result<Option<String>, HarnessError> {
    let instance = pricing.instance();
    let n = instance.n_buyers();
    let k = instance.n_sellers();
    let matroid = matroid_of(instance)?;
    let dists: Vec<&Distribution> = instance.buyers().iter().collect();
    let space = ProductSpace::new(&dists, exact_cap(pricing.engine()))?;

    for at in 0..space.len() {
        let (values, _) = space.decode_units(at);
        for &mask in &independent_buyer_masks(instance)? {
            let served = buyer_set_of(mask);
            for buyer in (0..n).filter(|b| !served.contains(b)) {
                let mut with = served.clone();
                with.insert(buyer);
                if !matroid.is_independent(&with) {
                    continue;
                }
                for capacity in 1..=k {
                    let serve = oracle::opt_buyers(&values, matroid, &with, capacity).1;
                    let shrink = oracle::opt_buyers(&values, matroid, &served, capacity - 1).1;
                    if serve > shrink {
                        return Ok(Some(format!(
                            "serving buyer {buyer} on {served:?} at capacity {capacity} left \
                             optimum {serve}, above {shrink} for one slot fewer"
                        )));
                    }
                }
            }
        }
    }
    Ok(None)
}

/// Realized thresholds are collectively covered by what remains: for every
/// value realization, conditioning set, and feasible extension, the summed
/// marginal thresholds stay at or below the remaining realized optimum.
/// The worst extension is found by greedy matroid maximization, which is
/// exact, so this bounds every extension at once.
fn check_price_sum(
    pricing: &MatroidWbbPricing,
    threshold_scale: &Rat,
) -> Result<Option<String>, HarnessError> {
    let instance = pricing.instance();
    let n = instance.n_buyers();
    let agents = n + instance.n_sellers();
    let extended = pricing.extended();
    let conditioning: Vec<BTreeSet<AgentId>> = (0u32..1 << agents)
        .map(|mask| agent_set_of(mask, n))
        .filter(|set| extended.is_independent(set))
        .collect();
    let ids: Vec<AgentId> = instance.agents().collect();
    let dists: Vec<&Distribution> =
        instance.buyers().iter().chain(instance.sellers().iter()).collect();
    let space = ProductSpace::new(&dists, exact_cap(pricing.engine()))?;

    for at in 0..space.len() {
        let (values, _) = space.decode_units(at);
        for charged in &conditioning {
            let base = pricing.realized_opt_given(charged, &values);
            let mut marginals: Vec<(AgentId, Rat)> = Vec::new();
            for &agent in &ids {
                if charged.contains(&agent) || !extended.can_add(charged, agent) {
                    continue;
                }
                let mut with = charged.clone();
                with.insert(agent);
                let marginal = &base - pricing.realized_opt_given(&with, &values);
                if marginal < rat_zero() {
                    return Ok(Some(format!(
                        "negative realized threshold {marginal} for {agent} at {charged:?}"
                    )));
                }
                marginals.push((agent, marginal));
            }
            marginals.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            let mut grown = charged.clone();
            let mut total = rat_zero();
            for (agent, marginal) in marginals {
                if marginal.is_zero() {
                    break;
                }
                if extended.can_add(&grown, agent) {
                    grown.insert(agent);
                    total += marginal;
                }
            }
            if threshold_scale * &total > base {
                return Ok(Some(format!(
                    "thresholds summing to {total} (scaled by {threshold_scale}) exceed the \
                     remaining optimum {base} at {charged:?}"
                )));
            }
        }
    }
    Ok(None)
}

/// Conditioned prices never drop as the conditioning set grows: for
/// independent sets X within Y, every agent's price given X is at most the
/// price given Y (a blocked price counts as infinite).
fn check_conditioned_price_monotone(
    pricing: &MatroidWbbPricing,
) -> Result<Option<String>, HarnessError> {
    let instance = pricing.instance();
    let n = instance.n_buyers();
    let agents = n + instance.n_sellers();
    let extended = pricing.extended();
    let ids: Vec<AgentId> = instance.agents().collect();

    for big_mask in 0u32..1 << agents {
        let big = agent_set_of(big_mask, n);
        if !extended.is_independent(&big) {
            continue;
        }
        let found = for_each_submask(big_mask, |small_mask| {
            let small = agent_set_of(small_mask, n);
            for &agent in &ids {
                if big.contains(&agent) {
                    continue;
                }
                let loose = match pricing.price(agent, &small) {
                    Ok(p) => p,
                    Err(e) => return Some(format!("pricing failed: {e}")),
                };
                if let Price::Finite(p) = &loose {
                    if p < &rat_zero() {
                        return Some(format!("negative price {p} for {agent} at {small:?}"));
                    }
                }
                let tight = match pricing.price(agent, &big) {
                    Ok(p) => p,
                    Err(e) => return Some(format!("pricing failed: {e}")),
                };
                if loose > tight {
                    return Some(format!(
                        "price for {agent} dropped from {loose} at {small:?} to {tight} at {big:?}"
                    ));
                }
            }
            None
        });
        if let Some(detail) = found {
            return Ok(Some(detail));
        }
    }
    Ok(None)
}
