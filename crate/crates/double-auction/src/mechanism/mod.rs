//! The posted-price double-auction mechanisms.
//!
//! Every mechanism follows the same shape: compute balanced prices from the
//! value distributions (never from reported values), then walk the market in
//! some order posting take-it-or-leave-it prices. [`Mechanism::prepare`]
//! validates the instance and precomputes prices; [`Prepared::run`] executes
//! one arrival order on one value profile. Arrival orders and tie-breaks that
//! the mechanism leaves open are delegated to an [`Adversary`], so the same
//! run code serves canonical evaluation, randomized sweeps, worst-case search,
//! and exhaustive enumeration.
//!
//! Three deliberately broken variants of the bilateral mechanism are included
//! as negative controls for the incentive test harness.

pub mod adversary;
mod combinatorial;
mod knapsack;
mod matroid;

pub use adversary::{
    Adversary, CanonicalOrder, ChoiceContext, ChoiceKind, FixedOrder, GreedyAdversary, OrderError,
    ScriptedAdversary, SeededRandom, StrategyScript, VisitedChoice,
};

use crate::engine::{Engine, EngineError};
use crate::market::{
    AgentId, Constraint, Distribution, Instance, MarketError, Outcome, OutcomeBuilder, Profile,
    Role, Valuation, XosValuation,
};
use crate::matroid::Matroid;
use crate::oracle::{self, OracleError};
use crate::pricing::{
    bilateral_expected_max, bilateral_price, BudgetRegime, CombinatorialPricing, KnapsackPricing,
    MatroidSbbPricing, MatroidWbbPricing, Price, PricingError,
};
use crate::rational::{rat, Rat};
use num::Zero;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum MechanismError {
    #[error(transparent)]
    Pricing(#[from] PricingError),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("{mechanism} cannot run on this instance: {reason}")]
    Incompatible { mechanism: &'static str, reason: String },
}

fn incompatible(mechanism: Mechanism, reason: impl Into<String>) -> MechanismError {
    MechanismError::Incompatible { mechanism: mechanism.name(), reason: reason.into() }
}

// ---------------------------------------------------------------------------
// Mechanism identifiers
// ---------------------------------------------------------------------------

/// Every mechanism the crate ships, plus the broken negative controls.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mechanism {
    /// One buyer, one seller, a single posted price, equal transfers.
    Bilateral,
    /// Matroid-constrained market, strong budget balance (pair prices).
    MatroidSbb,
    /// Matroid-constrained market, weak budget balance (marginal prices).
    MatroidWbb,
    /// Heterogeneous items with XOS values, per-item posted prices.
    Combinatorial,
    /// Knapsack market with all buyer weights at most 1/2, strong balance.
    KnapsackSbb,
    /// Knapsack market with all buyer weights at most 1/2, weak balance.
    KnapsackWbb,
    /// Arbitrary-weight knapsack market: split into light/heavy buyers and run
    /// the better branch, strong balance.
    KnapsackGeneralSbb,
    /// Arbitrary-weight knapsack market, weak balance.
    KnapsackGeneralWbb,
    /// Broken control: the buyer pays their reported value, not the price.
    MutantPriceShaving,
    /// Broken control: the buyer must take the item whenever the seller sells.
    MutantForcedTrade,
    /// Broken control: a declining buyer is re-offered the item at half price.
    MutantReoffer,
}

impl Mechanism {
    /// The shipped mechanisms (the negative controls are addressable by name
    /// but deliberately excluded here).
    pub const ALL: [Mechanism; 8] = [
        Mechanism::Bilateral,
        Mechanism::MatroidSbb,
        Mechanism::MatroidWbb,
        Mechanism::Combinatorial,
        Mechanism::KnapsackSbb,
        Mechanism::KnapsackWbb,
        Mechanism::KnapsackGeneralSbb,
        Mechanism::KnapsackGeneralWbb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mechanism::Bilateral => "bilateral",
            Mechanism::MatroidSbb => "matroid-sbb",
            Mechanism::MatroidWbb => "matroid-wbb",
            Mechanism::Combinatorial => "combinatorial",
            Mechanism::KnapsackSbb => "knapsack-sbb",
            Mechanism::KnapsackWbb => "knapsack-wbb",
            Mechanism::KnapsackGeneralSbb => "knapsack-general-sbb",
            Mechanism::KnapsackGeneralWbb => "knapsack-general-wbb",
            Mechanism::MutantPriceShaving => "mutant-price-shaving",
            Mechanism::MutantForcedTrade => "mutant-forced-trade",
            Mechanism::MutantReoffer => "mutant-reoffer",
        }
    }

    pub fn from_name(name: &str) -> Option<Mechanism> {
        let all = [
            Mechanism::Bilateral,
            Mechanism::MatroidSbb,
            Mechanism::MatroidWbb,
            Mechanism::Combinatorial,
            Mechanism::KnapsackSbb,
            Mechanism::KnapsackWbb,
            Mechanism::KnapsackGeneralSbb,
            Mechanism::KnapsackGeneralWbb,
            Mechanism::MutantPriceShaving,
            Mechanism::MutantForcedTrade,
            Mechanism::MutantReoffer,
        ];
        all.into_iter().find(|m| m.name() == name)
    }

    pub fn is_mutant(self) -> bool {
        matches!(
            self,
            Mechanism::MutantPriceShaving | Mechanism::MutantForcedTrade | Mechanism::MutantReoffer
        )
    }

    /// The budget-balance guarantee the mechanism promises: `Strong` means
    /// every trade settles at equal transfers, `Weak` means the mechanism may
    /// keep a per-trade surplus but never subsidizes.
    pub fn budget_requirement(self) -> BudgetRegime {
        match self {
            Mechanism::MatroidWbb | Mechanism::KnapsackWbb | Mechanism::KnapsackGeneralWbb => {
                BudgetRegime::Weak
            }
            _ => BudgetRegime::Strong,
        }
    }

    /// Validate the instance and precompute every price the runs will need.
    pub fn prepare(
        self,
        instance: &Arc<Instance>,
        engine: Engine,
    ) -> Result<Prepared, MechanismError> {
        let inner = match self {
            Mechanism::Bilateral => prepare_bilateral(instance, &engine, None)?,
            Mechanism::MutantPriceShaving => {
                prepare_bilateral(instance, &engine, Some(Mutant::PriceShaving))?
            }
            Mechanism::MutantForcedTrade => {
                prepare_bilateral(instance, &engine, Some(Mutant::ForcedTrade))?
            }
            Mechanism::MutantReoffer => {
                prepare_bilateral(instance, &engine, Some(Mutant::Reoffer))?
            }
            Mechanism::MatroidSbb => {
                Inner::MatroidSbb(MatroidSbbPricing::new(Arc::clone(instance), engine)?)
            }
            Mechanism::MatroidWbb => {
                Inner::MatroidWbb(MatroidWbbPricing::new(Arc::clone(instance), engine)?)
            }
            Mechanism::Combinatorial => {
                check_combinatorial_class(self, instance)?;
                Inner::Combinatorial(CombinatorialPricing::new(Arc::clone(instance), engine)?)
            }
            Mechanism::KnapsackSbb => prepare_restricted_knapsack(
                self,
                instance,
                engine,
                BudgetRegime::Strong,
            )?,
            Mechanism::KnapsackWbb => prepare_restricted_knapsack(
                self,
                instance,
                engine,
                BudgetRegime::Weak,
            )?,
            Mechanism::KnapsackGeneralSbb => {
                prepare_general_knapsack(instance, engine, BudgetRegime::Strong)?
            }
            Mechanism::KnapsackGeneralWbb => {
                prepare_general_knapsack(instance, engine, BudgetRegime::Weak)?
            }
        };
        Ok(Prepared { mechanism: self, instance: Arc::clone(instance), engine, inner })
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

// ---------------------------------------------------------------------------
// Run artifacts
// ---------------------------------------------------------------------------

/// Which side of the light/heavy split a general knapsack run executed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KnapsackBranch {
    Low,
    High,
}

impl fmt::Display for KnapsackBranch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KnapsackBranch::Low => "low",
            KnapsackBranch::High => "high",
        })
    }
}

/// Everything observable about one mechanism execution beyond the outcome.
#[derive(Clone, Debug, Default)]
pub struct RunLog {
    /// Every price shown to an agent, in consultation order. A seller's entry
    /// is the threshold below which they would sell; a buyer's entry is the
    /// price at which they could buy (or `Blocked` if they cannot be served).
    pub offers: Vec<(AgentId, Price)>,
    /// Agents added to the weak-balance conditioning set, each with the price
    /// evaluated at the moment of addition. The prices telescope: their sum
    /// equals half the drop in expected optimal welfare from the empty state
    /// to the final state. Empty for strongly balanced mechanisms.
    pub consumed: Vec<(AgentId, Rat)>,
    /// Set for general knapsack runs; `None` elsewhere.
    pub branch: Option<KnapsackBranch>,
}

impl RunLog {
    /// Finite prices actually shown to `agent`, in order.
    pub fn offers_to(&self, agent: AgentId) -> impl Iterator<Item = &Price> + '_ {
        self.offers.iter().filter(move |(a, _)| *a == agent).map(|(_, p)| p)
    }

    /// Every finite posted price that appeared anywhere in the run.
    pub fn finite_offer_prices(&self) -> impl Iterator<Item = &Rat> + '_ {
        self.offers.iter().filter_map(|(_, p)| p.finite())
    }
}

/// The outcome of one execution plus its observability log.
#[derive(Clone, Debug)]
pub struct MechanismRun {
    pub outcome: Outcome,
    pub log: RunLog,
}

/// Every price a prepared mechanism quotes before any report arrives,
/// structured by mechanism family. State-dependent prices are evaluated at
/// the initial state (nobody served, nothing conditioned, full capacity).
#[derive(Clone, Debug)]
pub enum PriceTable {
    /// The single posted price both parties face.
    Bilateral { posted: Rat },
    /// Buyer thresholds and pair prices at the empty served set with full
    /// rank capacity, plus the state-free seller means. `pair_prices` is
    /// buyer-major: `pair_prices[i][j]` quotes buyer `i` against seller `j`.
    MatroidSbb {
        buyer_thresholds: Vec<Price>,
        seller_means: Vec<Rat>,
        pair_prices: Vec<Vec<Price>>,
    },
    /// Marginal prices at the empty conditioning set, buyers then sellers.
    MatroidWbb { agent_prices: Vec<(AgentId, Price)> },
    /// Static anonymous per-item prices, indexed like [`Instance::items`].
    Combinatorial { item_prices: Vec<Rat> },
    /// Static per-buyer prices; the seller price exists only in the weak
    /// budget-balance regime.
    Knapsack { buyer_prices: Vec<Rat>, seller_price: Option<Rat> },
    /// The branch a general knapsack preparation committed to, the original
    /// buyer index behind each sub-market buyer, and the sub-market's table.
    KnapsackGeneral {
        branch: KnapsackBranch,
        buyer_map: Vec<usize>,
        table: Box<PriceTable>,
    },
}

// ---------------------------------------------------------------------------
// Prepared mechanisms
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mutant {
    PriceShaving,
    ForcedTrade,
    Reoffer,
}

struct GeneralWrapper {
    branch: KnapsackBranch,
    expected_low: Rat,
    expected_high: Rat,
    /// Sub-instance buyer index -> original buyer index (strictly increasing).
    buyer_map: Vec<usize>,
    sub: Box<Prepared>,
}

enum Inner {
    Bilateral { price: Rat, mutant: Option<Mutant> },
    MatroidSbb(MatroidSbbPricing),
    MatroidWbb(MatroidWbbPricing),
    Combinatorial(CombinatorialPricing),
    KnapsackSbb(KnapsackPricing),
    KnapsackWbb(KnapsackPricing),
    KnapsackGeneral(GeneralWrapper),
    /// A single-item knapsack market run as the combinatorial auction on an
    /// equivalent one-item instance.
    Delegated(Box<Prepared>),
}

/// A mechanism bound to an instance with all prices precomputed. Cheap to run
/// repeatedly: price caches are shared across runs, profiles, and orders.
pub struct Prepared {
    mechanism: Mechanism,
    instance: Arc<Instance>,
    engine: Engine,
    inner: Inner,
}

impl fmt::Debug for Prepared {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Prepared").field("mechanism", &self.mechanism).finish_non_exhaustive()
    }
}

impl Prepared {
    pub fn mechanism(&self) -> Mechanism {
        self.mechanism
    }

    pub fn instance(&self) -> &Arc<Instance> {
        &self.instance
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn budget_requirement(&self) -> BudgetRegime {
        self.mechanism.budget_requirement()
    }

    /// The branch a general knapsack preparation committed to, if any. The
    /// choice depends only on the distributions, never on reported values.
    pub fn knapsack_branch(&self) -> Option<KnapsackBranch> {
        match &self.inner {
            Inner::KnapsackGeneral(w) => Some(w.branch),
            _ => None,
        }
    }

    /// Expected sub-market optima behind a general knapsack branch choice:
    /// `(light side, heavy side)`.
    pub fn knapsack_expected_sides(&self) -> Option<(&Rat, &Rat)> {
        match &self.inner {
            Inner::KnapsackGeneral(w) => Some((&w.expected_low, &w.expected_high)),
            _ => None,
        }
    }

    /// Execute one arrival order on one value profile. Mechanisms without
    /// open ordering choices (bilateral, the strongly balanced matroid and
    /// knapsack auctions) never consult the adversary.
    pub fn run(
        &self,
        profile: &Profile,
        adversary: &mut dyn Adversary,
    ) -> Result<MechanismRun, MechanismError> {
        match &self.inner {
            Inner::Bilateral { price, mutant } => {
                run_bilateral_inner(&self.instance, profile, price, *mutant)
            }
            Inner::MatroidSbb(pricing) => matroid::run_sbb(pricing, profile),
            Inner::MatroidWbb(pricing) => matroid::run_wbb(pricing, profile, adversary),
            Inner::Combinatorial(pricing) => combinatorial::run(pricing, profile, adversary),
            Inner::KnapsackSbb(pricing) => knapsack::run_sbb(pricing, profile),
            Inner::KnapsackWbb(pricing) => knapsack::run_wbb(pricing, profile, adversary),
            Inner::KnapsackGeneral(wrapper) => {
                knapsack::run_general(&self.instance, wrapper, profile, adversary)
            }
            Inner::Delegated(sub) => {
                let converted = xosify_profile(profile);
                let run = sub.run(&converted, adversary)?;
                // Re-express the outcome against the original instance; agent
                // and item identifiers coincide by construction.
                let mut builder = OutcomeBuilder::new(&self.instance);
                for record in &run.outcome.ledger {
                    builder.trade(
                        record.item,
                        record.seller.index,
                        record.buyer.index,
                        record.buyer_pays.clone(),
                        record.seller_receives.clone(),
                    );
                }
                for seller in 0..self.instance.n_sellers() {
                    for &item in run.outcome.bundle(AgentId::seller(seller)) {
                        builder.assign(AgentId::seller(seller), item);
                    }
                }
                Ok(MechanismRun { outcome: builder.build(&self.instance)?, log: run.log })
            }
        }
    }

    /// Run under the canonical (lowest-index-first) order.
    pub fn run_canonical(&self, profile: &Profile) -> Result<MechanismRun, MechanismError> {
        self.run(profile, &mut CanonicalOrder)
    }

    /// Expected first-best welfare of the instance this mechanism was
    /// prepared for, under the prepared engine.
    pub fn expected_opt(&self) -> Result<Rat, MechanismError> {
        match &self.inner {
            Inner::Bilateral { .. } => Ok(bilateral_expected_max(&self.instance, &self.engine)?),
            Inner::MatroidSbb(_) => {
                let matroid = match self.instance.constraint() {
                    Constraint::Matroid(m) => m,
                    _ => unreachable!("validated at prepare"),
                };
                let n = self.instance.n_buyers();
                let dists: Vec<&Distribution> =
                    self.instance.buyers().iter().chain(self.instance.sellers()).collect();
                let estimate = self.engine.expect_units(&dists, |values| {
                    let (buyers, sellers) = values.split_at(n);
                    oracle::opt_all_agents(buyers, sellers, matroid, &BTreeSet::new()).1
                })?;
                Ok(estimate.value)
            }
            Inner::MatroidWbb(pricing) => Ok(pricing.expected_opt_given(&BTreeSet::new())?),
            Inner::Combinatorial(_) => {
                let instance = &self.instance;
                let estimate = self.engine.expect_instance(instance, |profile| {
                    oracle::opt_combinatorial(instance, profile)
                        .expect("instance size validated at prepare")
                        .welfare
                })?;
                Ok(estimate.value)
            }
            Inner::KnapsackSbb(pricing) | Inner::KnapsackWbb(pricing) => {
                Ok(pricing.expected_opt().clone())
            }
            Inner::KnapsackGeneral(_) => {
                let weights = match self.instance.constraint() {
                    Constraint::Knapsack { weights } => weights,
                    _ => unreachable!("validated at prepare"),
                };
                let n = self.instance.n_buyers();
                let dists: Vec<&Distribution> =
                    self.instance.buyers().iter().chain(self.instance.sellers()).collect();
                let estimate = self.engine.expect_units(&dists, |values| {
                    let (buyers, sellers) = values.split_at(n);
                    oracle::opt_knapsack(buyers, weights, sellers)
                        .expect("buyer count checked at prepare")
                        .1
                })?;
                Ok(estimate.value)
            }
            // The single-item conversion preserves welfare exactly.
            Inner::Delegated(sub) => sub.expected_opt(),
        }
    }

    /// For weakly balanced matroid runs: the two sides of the telescoping
    /// identity — the sum of consumed prices and half the drop in expected
    /// optimal welfare between the empty and final conditioning states. Both
    /// are computed from the same cached expectations, so on a correct run
    /// they are exactly equal. `None` for mechanisms without marginal prices.
    pub fn telescoping_sides(&self, log: &RunLog) -> Result<Option<(Rat, Rat)>, MechanismError> {
        match &self.inner {
            Inner::MatroidWbb(pricing) => {
                let mut sum = Rat::zero();
                let mut conditioned = BTreeSet::new();
                for (agent, price) in &log.consumed {
                    sum += price;
                    conditioned.insert(*agent);
                }
                let empty = pricing.expected_opt_given(&BTreeSet::new())?;
                let end = pricing.expected_opt_given(&conditioned)?;
                Ok(Some((sum, (empty - end) / rat(2, 1))))
            }
            Inner::KnapsackGeneral(wrapper) => {
                // Only the high branch in the weak regime has marginal prices,
                // and the consumed log already uses original buyer indices;
                // translate back before asking the sub-mechanism.
                let sub = &wrapper.sub;
                if !matches!(sub.inner, Inner::MatroidWbb(_)) {
                    return Ok(None);
                }
                let back: BTreeMap<usize, usize> = wrapper
                    .buyer_map
                    .iter()
                    .enumerate()
                    .map(|(sub_idx, &orig)| (orig, sub_idx))
                    .collect();
                let mut translated = log.clone();
                for (agent, _) in translated.consumed.iter_mut() {
                    if agent.role == Role::Buyer {
                        *agent = AgentId::buyer(back[&agent.index]);
                    }
                }
                sub.telescoping_sides(&translated)
            }
            _ => Ok(None),
        }
    }

    /// Every price this mechanism would quote at its initial state. Pair and
    /// threshold prices of the matroid mechanisms are evaluated before anyone
    /// is served; static prices are returned as computed at preparation.
    pub fn price_table(&self) -> Result<PriceTable, MechanismError> {
        match &self.inner {
            Inner::Bilateral { price, .. } => Ok(PriceTable::Bilateral { posted: price.clone() }),
            Inner::MatroidSbb(pricing) => {
                let n = self.instance.n_buyers();
                let k = self.instance.n_sellers();
                let empty = BTreeSet::new();
                let mut buyer_thresholds = Vec::with_capacity(n);
                let mut pair_prices = Vec::with_capacity(n);
                for buyer in 0..n {
                    buyer_thresholds.push(pricing.buyer_threshold(buyer, &empty, k)?);
                    let mut row = Vec::with_capacity(k);
                    for seller in 0..k {
                        row.push(pricing.trade_price(buyer, seller, &empty, k)?);
                    }
                    pair_prices.push(row);
                }
                let seller_means =
                    (0..k).map(|j| pricing.seller_threshold(j).clone()).collect();
                Ok(PriceTable::MatroidSbb { buyer_thresholds, seller_means, pair_prices })
            }
            Inner::MatroidWbb(pricing) => {
                let empty = BTreeSet::new();
                let mut agent_prices = Vec::new();
                for agent in self.instance.agents() {
                    agent_prices.push((agent, pricing.price(agent, &empty)?));
                }
                Ok(PriceTable::MatroidWbb { agent_prices })
            }
            Inner::Combinatorial(pricing) => {
                Ok(PriceTable::Combinatorial { item_prices: pricing.item_prices().to_vec() })
            }
            Inner::KnapsackSbb(pricing) | Inner::KnapsackWbb(pricing) => {
                let buyer_prices =
                    (0..self.instance.n_buyers()).map(|i| pricing.buyer_price(i)).collect();
                let seller_price = match pricing.regime() {
                    BudgetRegime::Weak => Some(pricing.seller_price()?),
                    BudgetRegime::Strong => None,
                };
                Ok(PriceTable::Knapsack { buyer_prices, seller_price })
            }
            Inner::KnapsackGeneral(wrapper) => Ok(PriceTable::KnapsackGeneral {
                branch: wrapper.branch,
                buyer_map: wrapper.buyer_map.clone(),
                table: Box::new(wrapper.sub.price_table()?),
            }),
            Inner::Delegated(sub) => sub.price_table(),
        }
    }
}

// ---------------------------------------------------------------------------
// Preparation helpers
// ---------------------------------------------------------------------------

fn prepare_bilateral(
    instance: &Arc<Instance>,
    engine: &Engine,
    mutant: Option<Mutant>,
) -> Result<Inner, MechanismError> {
    let price = bilateral_price(instance, engine)?;
    Ok(Inner::Bilateral { price, mutant })
}

/// Combinatorial runs need XOS values everywhere and either unit-supply
/// sellers or fully additive values; anything else voids the guarantee.
fn check_combinatorial_class(
    mechanism: Mechanism,
    instance: &Arc<Instance>,
) -> Result<(), MechanismError> {
    if !matches!(instance.constraint(), Constraint::Unconstrained) {
        return Err(incompatible(
            mechanism,
            "combinatorial markets carry no cross-buyer constraint",
        ));
    }
    let supports = instance
        .buyers()
        .iter()
        .chain(instance.sellers())
        .flat_map(|d| d.support().iter().map(|(v, _)| v));
    let mut all_additive = true;
    for valuation in supports {
        match valuation {
            Valuation::Unit(_) => {
                return Err(incompatible(
                    mechanism,
                    "every support valuation must be a set function over the items",
                ));
            }
            Valuation::Xos(x) => all_additive &= x.is_additive(),
        }
    }
    let unit_supply =
        (0..instance.n_sellers()).all(|l| instance.endowment(l).len() == 1);
    if !unit_supply && !all_additive {
        return Err(incompatible(
            mechanism,
            "sellers with multiple items require additive values on both sides",
        ));
    }
    Ok(())
}

fn prepare_restricted_knapsack(
    mechanism: Mechanism,
    instance: &Arc<Instance>,
    engine: Engine,
    regime: BudgetRegime,
) -> Result<Inner, MechanismError> {
    let weights = match instance.constraint() {
        Constraint::Knapsack { weights } => weights,
        _ => return Err(PricingError::NotKnapsack.into()),
    };
    if instance.n_sellers() == 1 {
        return delegate_unit_knapsack(instance, engine);
    }
    let half = rat(1, 2);
    if weights.iter().any(|w| *w > half) {
        return Err(incompatible(
            mechanism,
            "a buyer weight exceeds 1/2; use the general knapsack mechanism",
        ));
    }
    let pricing = KnapsackPricing::new(Arc::clone(instance), regime, engine)?;
    Ok(match regime {
        BudgetRegime::Strong => Inner::KnapsackSbb(pricing),
        BudgetRegime::Weak => Inner::KnapsackWbb(pricing),
    })
}

fn prepare_general_knapsack(
    instance: &Arc<Instance>,
    engine: Engine,
    regime: BudgetRegime,
) -> Result<Inner, MechanismError> {
    let weights = match instance.constraint() {
        Constraint::Knapsack { weights } => weights.clone(),
        _ => return Err(PricingError::NotKnapsack.into()),
    };
    if instance.n_sellers() == 1 {
        return delegate_unit_knapsack(instance, engine);
    }
    let n = instance.n_buyers();
    if n > oracle::MAX_KNAPSACK_BUYERS {
        return Err(PricingError::from(OracleError::TooManyBuyers(n)).into());
    }
    let half = rat(1, 2);
    let low: Vec<usize> = (0..n).filter(|&i| weights[i] <= half).collect();
    let high: Vec<usize> = (0..n).filter(|&i| weights[i] > half).collect();

    // Expected first-best welfare of each sub-market. Heavy buyers exceed
    // half the capacity, so at most one can ever be served: a rank-one
    // matroid market is exact there.
    let low_weights: Vec<Rat> = low.iter().map(|&i| weights[i].clone()).collect();
    let expected_low = {
        let dists: Vec<&Distribution> = low
            .iter()
            .map(|&i| &instance.buyers()[i])
            .chain(instance.sellers())
            .collect();
        engine
            .expect_units(&dists, |values| {
                let (buyers, sellers) = values.split_at(low.len());
                oracle::opt_knapsack(buyers, &low_weights, sellers)
                    .expect("buyer count checked above")
                    .1
            })?
            .value
    };
    let high_matroid = Matroid::uniform(high.len(), high.len().min(1))
        .expect("rank never exceeds the ground size");
    let expected_high = {
        let dists: Vec<&Distribution> = high
            .iter()
            .map(|&i| &instance.buyers()[i])
            .chain(instance.sellers())
            .collect();
        engine
            .expect_units(&dists, |values| {
                let (buyers, sellers) = values.split_at(high.len());
                oracle::opt_all_agents(buyers, sellers, &high_matroid, &BTreeSet::new()).1
            })?
            .value
    };

    // Branch by comparing each side's guaranteed fraction of its sub-market
    // optimum; ties go to the heavy side, whose factor is better.
    let (low_coef, high_coef) = match regime {
        BudgetRegime::Strong => (rat(1, 7), rat(1, 3)),
        BudgetRegime::Weak => (rat(1, 5), rat(1, 2)),
    };
    let pick_high = high_coef * &expected_high >= low_coef * &expected_low;

    let (branch, buyer_map, sub_mechanism, constraint) = if pick_high {
        let sub = match regime {
            BudgetRegime::Strong => Mechanism::MatroidSbb,
            BudgetRegime::Weak => Mechanism::MatroidWbb,
        };
        (KnapsackBranch::High, high, sub, Constraint::Matroid(high_matroid))
    } else {
        let sub = match regime {
            BudgetRegime::Strong => Mechanism::KnapsackSbb,
            BudgetRegime::Weak => Mechanism::KnapsackWbb,
        };
        (KnapsackBranch::Low, low, sub, Constraint::Knapsack { weights: low_weights })
    };
    let sub_buyers: Vec<Distribution> =
        buyer_map.iter().map(|&i| instance.buyers()[i].clone()).collect();
    let sub_instance =
        Arc::new(Instance::unit_market(sub_buyers, instance.sellers().to_vec(), constraint)?);
    let sub = sub_mechanism.prepare(&sub_instance, engine)?;
    Ok(Inner::KnapsackGeneral(GeneralWrapper {
        branch,
        expected_low,
        expected_high,
        buyer_map,
        sub: Box::new(sub),
    }))
}

/// A one-seller knapsack market is exactly a one-item combinatorial market:
/// rebuild the instance with singleton additive values and delegate.
fn delegate_unit_knapsack(
    instance: &Arc<Instance>,
    engine: Engine,
) -> Result<Inner, MechanismError> {
    let convert = |d: &Distribution| -> Result<Distribution, MarketError> {
        let support = d
            .support()
            .iter()
            .map(|(v, p)| Ok((xosify_valuation(v)?, p.clone())))
            .collect::<Result<Vec<_>, MarketError>>()?;
        Distribution::new(support)
    };
    let buyers =
        instance.buyers().iter().map(convert).collect::<Result<Vec<_>, _>>()?;
    let sellers =
        instance.sellers().iter().map(convert).collect::<Result<Vec<_>, _>>()?;
    let sub_instance = Arc::new(Instance::new(
        buyers,
        sellers,
        instance.items().to_vec(),
        vec![BTreeSet::from([0usize])],
        Constraint::Unconstrained,
    )?);
    let sub = Mechanism::Combinatorial.prepare(&sub_instance, engine)?;
    Ok(Inner::Delegated(Box::new(sub)))
}

fn xosify_valuation(valuation: &Valuation) -> Result<Valuation, MarketError> {
    Ok(match valuation {
        Valuation::Unit(r) => {
            Valuation::Xos(XosValuation::additive(BTreeMap::from([(0usize, r.clone())]))?)
        }
        xos @ Valuation::Xos(_) => xos.clone(),
    })
}

fn xosify_profile(profile: &Profile) -> Profile {
    let convert = |v: &Valuation| {
        xosify_valuation(v).expect("singleton additive valuations are always well formed")
    };
    Profile {
        buyers: profile.buyers.iter().map(convert).collect(),
        sellers: profile.sellers.iter().map(convert).collect(),
    }
}

// ---------------------------------------------------------------------------
// Shared run helpers
// ---------------------------------------------------------------------------

/// Scalar buyer and seller values of a profile; identical-item mechanisms
/// reject set-function reports.
fn scalar_profile(profile: &Profile) -> Result<(Vec<Rat>, Vec<Rat>), MechanismError> {
    profile
        .unit_values()
        .ok_or_else(|| PricingError::from(OracleError::NotUnitMarket).into())
}

/// Surface a choice to the adversary. Forced moves (a single option) are
/// resolved directly so adversary scripts only spend positions on real
/// decisions.
fn choose(
    adversary: &mut dyn Adversary,
    kind: ChoiceKind,
    options: &[AgentId],
    welfare_added: &[Rat],
) -> usize {
    debug_assert!(!options.is_empty());
    debug_assert_eq!(options.len(), welfare_added.len());
    if options.len() == 1 {
        return 0;
    }
    let ctx = ChoiceContext { kind, options, welfare_added };
    adversary.choose(&ctx).min(options.len() - 1)
}

/// Adapter that presents sub-instance choice points with original-instance
/// buyer identities, so user-supplied orders keep working through the general
/// knapsack wrapper. Buyer maps are strictly increasing, so option order is
/// preserved.
struct MappedAdversary<'a> {
    inner: &'a mut dyn Adversary,
    buyer_map: &'a [usize],
}

impl Adversary for MappedAdversary<'_> {
    fn choose(&mut self, ctx: &ChoiceContext<'_>) -> usize {
        let options: Vec<AgentId> = ctx
            .options
            .iter()
            .map(|a| match a.role {
                Role::Buyer => AgentId::buyer(self.buyer_map[a.index]),
                Role::Seller => *a,
            })
            .collect();
        let mapped = ChoiceContext {
            kind: ctx.kind,
            options: &options,
            welfare_added: ctx.welfare_added,
        };
        self.inner.choose(&mapped)
    }
}

// ---------------------------------------------------------------------------
// Bilateral trade (and its broken variants)
// ---------------------------------------------------------------------------

fn run_bilateral_inner(
    instance: &Arc<Instance>,
    profile: &Profile,
    price: &Rat,
    mutant: Option<Mutant>,
) -> Result<MechanismRun, MechanismError> {
    let (buyer_values, seller_values) = scalar_profile(profile)?;
    let v_buyer = &buyer_values[0];
    let v_seller = &seller_values[0];
    let item = instance.sole_item(0);
    let mut log = RunLog::default();
    let mut builder = OutcomeBuilder::new(instance);

    log.offers.push((AgentId::seller(0), Price::Finite(price.clone())));
    let seller_keeps = v_seller > price;
    if seller_keeps {
        builder.keep(instance, 0);
    } else {
        log.offers.push((AgentId::buyer(0), Price::Finite(price.clone())));
        match mutant {
            None => {
                if v_buyer >= price {
                    builder.trade(item, 0, 0, price.clone(), price.clone());
                } else {
                    builder.keep(instance, 0);
                }
            }
            // Broken: charge the buyer their report instead of the price.
            Some(Mutant::PriceShaving) => {
                if v_buyer >= price {
                    builder.trade(item, 0, 0, v_buyer.clone(), v_buyer.clone());
                } else {
                    builder.keep(instance, 0);
                }
            }
            // Broken: the buyer has no veto once the seller sells.
            Some(Mutant::ForcedTrade) => {
                builder.trade(item, 0, 0, price.clone(), price.clone());
            }
            // Broken: a second offer at half price after a decline.
            Some(Mutant::Reoffer) => {
                if v_buyer >= price {
                    builder.trade(item, 0, 0, price.clone(), price.clone());
                } else {
                    let discounted = price / rat(2, 1);
                    log.offers.push((AgentId::buyer(0), Price::Finite(discounted.clone())));
                    if *v_buyer >= discounted {
                        builder.trade(item, 0, 0, discounted.clone(), discounted);
                    } else {
                        builder.keep(instance, 0);
                    }
                }
            }
        }
    }
    Ok(MechanismRun { outcome: builder.build(instance)?, log })
}

// ---------------------------------------------------------------------------
// Spec-shaped entry points
// ---------------------------------------------------------------------------

pub fn run_bilateral(
    instance: &Arc<Instance>,
    profile: &Profile,
    engine: Engine,
) -> Result<MechanismRun, MechanismError> {
    Mechanism::Bilateral.prepare(instance, engine)?.run_canonical(profile)
}

pub fn run_matroid_sbb(
    instance: &Arc<Instance>,
    profile: &Profile,
    engine: Engine,
) -> Result<MechanismRun, MechanismError> {
    Mechanism::MatroidSbb.prepare(instance, engine)?.run_canonical(profile)
}

pub fn run_matroid_wbb(
    instance: &Arc<Instance>,
    profile: &Profile,
    adversary: &mut dyn Adversary,
    engine: Engine,
) -> Result<MechanismRun, MechanismError> {
    Mechanism::MatroidWbb.prepare(instance, engine)?.run(profile, adversary)
}

pub fn run_combinatorial(
    instance: &Arc<Instance>,
    profile: &Profile,
    adversary: &mut dyn Adversary,
    engine: Engine,
) -> Result<MechanismRun, MechanismError> {
    Mechanism::Combinatorial.prepare(instance, engine)?.run(profile, adversary)
}

pub fn run_knapsack_sbb(
    instance: &Arc<Instance>,
    profile: &Profile,
    engine: Engine,
) -> Result<MechanismRun, MechanismError> {
    Mechanism::KnapsackSbb.prepare(instance, engine)?.run_canonical(profile)
}

pub fn run_knapsack_wbb(
    instance: &Arc<Instance>,
    profile: &Profile,
    adversary: &mut dyn Adversary,
    engine: Engine,
) -> Result<MechanismRun, MechanismError> {
    Mechanism::KnapsackWbb.prepare(instance, engine)?.run(profile, adversary)
}

pub fn run_knapsack_general(
    instance: &Arc<Instance>,
    profile: &Profile,
    regime: BudgetRegime,
    adversary: &mut dyn Adversary,
    engine: Engine,
) -> Result<MechanismRun, MechanismError> {
    let mechanism = match regime {
        BudgetRegime::Strong => Mechanism::KnapsackGeneralSbb,
        BudgetRegime::Weak => Mechanism::KnapsackGeneralWbb,
    };
    mechanism.prepare(instance, engine)?.run(profile, adversary)
}

#[cfg(test)]
pub(crate) mod test_fixtures {
    use super::*;
    use crate::rational::rat_int;

    pub fn det(v: i64) -> Distribution {
        Distribution::point(rat_int(v))
    }

    pub fn coin(a: i64, b: i64) -> Distribution {
        Distribution::scalar(vec![(rat_int(a), rat(1, 2)), (rat_int(b), rat(1, 2))]).unwrap()
    }

    pub fn unit_profile(buyers: &[i64], sellers: &[i64]) -> Profile {
        Profile {
            buyers: buyers.iter().map(|&v| Valuation::Unit(rat_int(v))).collect(),
            sellers: sellers.iter().map(|&v| Valuation::Unit(rat_int(v))).collect(),
        }
    }

    pub fn bilateral_instance(buyer: Distribution, seller: Distribution) -> Arc<Instance> {
        Arc::new(
            Instance::unit_market(vec![buyer], vec![seller], Constraint::Unconstrained).unwrap(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::test_fixtures::*;
    use super::*;
    use crate::market::welfare;
    use crate::rational::rat_int;

    fn exact() -> Engine {
        Engine::exact_default()
    }

    #[test]
    fn bilateral_trade_executes_at_half_expected_max() {
        // Buyer uniform {0, 2}, seller at 0: price 1/2.
        let instance = bilateral_instance(coin(0, 2), det(0));
        let prepared = Mechanism::Bilateral.prepare(&instance, exact()).unwrap();
        let profile = unit_profile(&[2], &[0]);
        let run = prepared.run_canonical(&profile).unwrap();
        assert_eq!(run.outcome.ledger.len(), 1);
        let record = &run.outcome.ledger[0];
        assert_eq!(record.buyer_pays, rat(1, 2));
        assert_eq!(record.seller_receives, rat(1, 2));
        assert_eq!(welfare(&instance, &run.outcome, &profile), rat_int(2));
        // The same preparation on the zero-value draw leaves the item put.
        let low = unit_profile(&[0], &[0]);
        let run = prepared.run_canonical(&low).unwrap();
        assert!(run.outcome.ledger.is_empty());
        assert_eq!(run.outcome.bundle(AgentId::seller(0)).len(), 1);
    }

    #[test]
    fn bilateral_seller_above_price_keeps() {
        // Buyer 1, seller 4: E[max] = 4, price 2, and the seller stays above
        // it, so the buyer is never consulted.
        let instance = bilateral_instance(det(1), det(4));
        let run = run_bilateral(&instance, &unit_profile(&[1], &[4]), exact()).unwrap();
        assert!(run.outcome.ledger.is_empty());
        assert_eq!(run.outcome.bundle(AgentId::seller(0)), &BTreeSet::from([0]));
        assert_eq!(run.log.offers.len(), 1);
    }

    #[test]
    fn bilateral_indifferent_seller_sells_indifferent_buyer_buys() {
        // Buyer 4, seller 2: price = (1/2) max = 2. The seller is not
        // strictly above the price, so the item moves.
        let instance = bilateral_instance(det(4), det(2));
        let run = run_bilateral(&instance, &unit_profile(&[4], &[2]), exact()).unwrap();
        assert_eq!(run.outcome.ledger.len(), 1);
        assert_eq!(run.outcome.ledger[0].buyer_pays, rat_int(2));
        // Buyer coin {1, 3} against a worthless seller: price 1; the low
        // draw buys exactly at indifference.
        let instance = bilateral_instance(coin(1, 3), det(0));
        let run = run_bilateral(&instance, &unit_profile(&[1], &[0]), exact()).unwrap();
        assert_eq!(run.outcome.ledger.len(), 1);
        assert_eq!(run.outcome.ledger[0].buyer_pays, rat_int(1));
    }

    #[test]
    fn price_shaving_mutant_charges_report() {
        let instance = bilateral_instance(coin(0, 2), det(0));
        let prepared = Mechanism::MutantPriceShaving.prepare(&instance, exact()).unwrap();
        let run = prepared.run_canonical(&unit_profile(&[2], &[0])).unwrap();
        assert_eq!(run.outcome.ledger[0].buyer_pays, rat_int(2));
    }

    #[test]
    fn forced_trade_mutant_ignores_buyer_veto() {
        let instance = bilateral_instance(coin(0, 2), det(0));
        let prepared = Mechanism::MutantForcedTrade.prepare(&instance, exact()).unwrap();
        let run = prepared.run_canonical(&unit_profile(&[0], &[0])).unwrap();
        // Buyer at 0 still forced to pay the 1/2 price.
        assert_eq!(run.outcome.ledger.len(), 1);
        assert_eq!(run.outcome.ledger[0].buyer_pays, rat(1, 2));
    }

    #[test]
    fn reoffer_mutant_discounts_after_decline() {
        let instance = bilateral_instance(coin(0, 2), det(0));
        let prepared = Mechanism::MutantReoffer.prepare(&instance, exact()).unwrap();
        // Truthful buyer at 0 declines both offers.
        let run = prepared.run_canonical(&unit_profile(&[0], &[0])).unwrap();
        assert!(run.outcome.ledger.is_empty());
        assert_eq!(run.log.offers.len(), 3);
        // A report between 1/4 and 1/2 takes the discounted second offer.
        let shaved = Profile {
            buyers: vec![Valuation::Unit(rat(1, 3))],
            sellers: vec![Valuation::Unit(rat_int(0))],
        };
        let run = prepared.run_canonical(&shaved).unwrap();
        assert_eq!(run.outcome.ledger[0].buyer_pays, rat(1, 4));
    }

    #[test]
    fn mechanism_names_round_trip() {
        for mechanism in Mechanism::ALL {
            assert_eq!(Mechanism::from_name(mechanism.name()), Some(mechanism));
            assert!(!mechanism.is_mutant());
        }
        assert_eq!(
            Mechanism::from_name("mutant-forced-trade"),
            Some(Mechanism::MutantForcedTrade)
        );
        assert_eq!(Mechanism::from_name("nonsense"), None);
    }

    #[test]
    fn bilateral_rejects_two_buyer_instances() {
        let instance = Arc::new(
            Instance::unit_market(
                vec![det(1), det(2)],
                vec![det(0)],
                Constraint::Unconstrained,
            )
            .unwrap(),
        );
        let err = Mechanism::Bilateral.prepare(&instance, exact()).unwrap_err();
        assert!(matches!(err, MechanismError::Pricing(PricingError::NotBilateral)));
    }

    #[test]
    fn price_tables_expose_initial_prices() {
        // Bilateral: buyer 1 against seller 0 posts half the expected max.
        let instance = bilateral_instance(det(1), det(0));
        let prepared = Mechanism::Bilateral.prepare(&instance, exact()).unwrap();
        match prepared.price_table().unwrap() {
            PriceTable::Bilateral { posted } => assert_eq!(posted, rat(1, 2)),
            other => panic!("unexpected table {other:?}"),
        }

        // Knapsack: two half-weight buyers worth 10 and 6, free sellers.
        // OPT serves both, so each price is (2/7) * (1/2) * 16 = 16/7.
        let instance = Arc::new(
            Instance::unit_market(
                vec![det(10), det(6)],
                vec![det(0), det(0)],
                Constraint::Knapsack { weights: vec![rat(1, 2), rat(1, 2)] },
            )
            .unwrap(),
        );
        let prepared = Mechanism::KnapsackSbb.prepare(&instance, exact()).unwrap();
        match prepared.price_table().unwrap() {
            PriceTable::Knapsack { buyer_prices, seller_price } => {
                assert_eq!(buyer_prices, vec![rat(16, 7), rat(16, 7)]);
                assert_eq!(seller_price, None);
            }
            other => panic!("unexpected table {other:?}"),
        }
        let prepared = Mechanism::KnapsackWbb.prepare(&instance, exact()).unwrap();
        match prepared.price_table().unwrap() {
            PriceTable::Knapsack { seller_price, .. } => {
                // (2/5) * (1/2) * 16: sellers use the artificial weight 1/k.
                assert_eq!(seller_price, Some(rat(16, 5)));
            }
            other => panic!("unexpected table {other:?}"),
        }

        // Matroid: blocked pairs surface as blocked, feasible ones as finite.
        let instance = Arc::new(
            Instance::unit_market(
                vec![det(5), det(3)],
                vec![det(0)],
                Constraint::Matroid(Matroid::uniform(2, 1).unwrap()),
            )
            .unwrap(),
        );
        let prepared = Mechanism::MatroidSbb.prepare(&instance, exact()).unwrap();
        match prepared.price_table().unwrap() {
            PriceTable::MatroidSbb { buyer_thresholds, seller_means, pair_prices } => {
                assert_eq!(buyer_thresholds.len(), 2);
                assert_eq!(seller_means, vec![rat_int(0)]);
                assert!(pair_prices.iter().flatten().all(|p| p.finite().is_some()));
            }
            other => panic!("unexpected table {other:?}"),
        }
    }
}
