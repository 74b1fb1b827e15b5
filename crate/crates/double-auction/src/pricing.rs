//! Balanced posted prices for every mechanism family.
//!
//! Prices are expectations of marginal welfare quantities over the value
//! distributions. Each pricing object owns its instance and engine and
//! memoizes per conditioning state, so repeated mechanism runs (profile
//! sweeps, order sweeps, deviation probes) reuse each other's work. A price
//! can be `Blocked` — the agent cannot feasibly be added in that state —
//! which compares greater than every finite price.

use crate::engine::{Engine, EngineError};
use crate::market::{AgentId, Constraint, Distribution, Instance, Profile, Role, Valuation};
use crate::matroid::{ExtendedMatroid, Matroid};
use crate::oracle::{self, OracleError};
use crate::rational::{format_rat, Rat};
use dashmap::DashMap;
use num::Zero;
use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PricingError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("instance does not carry a matroid constraint")]
    NotMatroid,
    #[error("instance does not carry a knapsack constraint")]
    NotKnapsack,
    #[error("artificial weights need at least two items, got {0}")]
    TooFewItems(usize),
    #[error("sellers have no artificial weight in the strong-budget-balance regime")]
    SellerWeightInStrongRegime,
    #[error("bilateral pricing needs exactly one buyer and one seller")]
    NotBilateral,
    #[error("combinatorial pricing with non-additive values supports at most {max} items, got {got}")]
    TooManyItemsForXos { max: usize, got: usize },
}

/// Whether trades settle at equal transfers (strong budget balance) or may
/// leave the mechanism a surplus (weak budget balance).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BudgetRegime {
    Strong,
    Weak,
}

// ---------------------------------------------------------------------------
// Prices
// ---------------------------------------------------------------------------

/// A posted price, or the marker that the agent cannot be served in the
/// current state. `Blocked` is greater than every finite price, so
/// "max price first" scans naturally surface blocked agents for removal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Price {
    Finite(Rat),
    Blocked,
}

impl Price {
    pub fn finite(&self) -> Option<&Rat> {
        match self {
            Price::Finite(p) => Some(p),
            Price::Blocked => None,
        }
    }

    pub fn is_blocked(&self) -> bool {
        matches!(self, Price::Blocked)
    }
}

impl PartialOrd for Price {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Price {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Price::Blocked, Price::Blocked) => Ordering::Equal,
            (Price::Blocked, Price::Finite(_)) => Ordering::Greater,
            (Price::Finite(_), Price::Blocked) => Ordering::Less,
            (Price::Finite(a), Price::Finite(b)) => a.cmp(b),
        }
    }
}

impl fmt::Display for Price {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Price::Finite(p) => write!(f, "{}", format_rat(p)),
            Price::Blocked => write!(f, "blocked"),
        }
    }
}

fn matroid_of(instance: &Instance) -> Result<&Matroid, PricingError> {
    match instance.constraint() {
        Constraint::Matroid(m) => Ok(m),
        _ => Err(PricingError::NotMatroid),
    }
}

fn all_dists(instance: &Instance) -> Vec<&Distribution> {
    instance.buyers().iter().chain(instance.sellers()).collect()
}

// ---------------------------------------------------------------------------
// Matroid market, strong budget balance
// ---------------------------------------------------------------------------

/// Prices for the equal-transfer matroid double auction.
///
/// * A buyer's threshold in state `(A_B, r)` is the expected loss of
///   optimal remaining buyer welfare caused by serving them now.
/// * A seller's threshold is simply their expected value (state-free).
/// * A trade between buyer `i` and seller `j` is quoted at one third of the
///   sum of the two thresholds.
pub struct MatroidSbbPricing {
    instance: Arc<Instance>,
    engine: Engine,
    seller_means: Vec<Rat>,
    buyer_cache: DashMap<(Vec<usize>, usize, usize), Price>,
}

impl MatroidSbbPricing {
    pub fn new(instance: Arc<Instance>, engine: Engine) -> Result<Self, PricingError> {
        matroid_of(&instance)?;
        let seller_means = instance
            .sellers()
            .iter()
            .map(|d| d.unit_mean().expect("matroid markets have scalar values"))
            .collect();
        Ok(MatroidSbbPricing { instance, engine, seller_means, buyer_cache: DashMap::new() })
    }

    pub fn instance(&self) -> &Arc<Instance> {
        &self.instance
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    fn matroid(&self) -> &Matroid {
        matroid_of(&self.instance).expect("validated at construction")
    }

    /// Is buyer `i` feasible to serve in state `(A_B, r)`?
    fn feasible(&self, buyer: usize, served: &BTreeSet<usize>, rank_cap: usize) -> bool {
        if served.contains(&buyer) || served.len() + 1 > rank_cap {
            return false;
        }
        let mut grown = served.clone();
        grown.insert(buyer);
        self.matroid().is_independent(&grown)
    }

    /// Threshold for buyer `i` under one realized vector of buyer values.
    pub fn buyer_threshold_realized(
        &self,
        buyer: usize,
        served: &BTreeSet<usize>,
        rank_cap: usize,
        buyer_values: &[Rat],
    ) -> Price {
        if !self.feasible(buyer, served, rank_cap) {
            return Price::Blocked;
        }
        let m = self.matroid();
        // Marginal loss of optimal remaining buyer welfare when i is served.
        let (_, before) = oracle::opt_buyers(buyer_values, m, served, rank_cap);
        let mut with = served.clone();
        with.insert(buyer);
        let (_, after) = oracle::opt_buyers(buyer_values, m, &with, rank_cap);
        Price::Finite(before - after)
    }

    /// Expected threshold for buyer `i` in state `(A_B, r)`.
    pub fn buyer_threshold(
        &self,
        buyer: usize,
        served: &BTreeSet<usize>,
        rank_cap: usize,
    ) -> Result<Price, PricingError> {
        if !self.feasible(buyer, served, rank_cap) {
            return Ok(Price::Blocked);
        }
        let key = (served.iter().copied().collect::<Vec<_>>(), rank_cap, buyer);
        if let Some(hit) = self.buyer_cache.get(&key) {
            return Ok(hit.clone());
        }
        let dists: Vec<&Distribution> = self.instance.buyers().iter().collect();
        let estimate = self.engine.expect_units(&dists, |values| {
            match self.buyer_threshold_realized(buyer, served, rank_cap, values) {
                Price::Finite(p) => p,
                Price::Blocked => unreachable!("feasibility is value-independent"),
            }
        })?;
        let price = Price::Finite(estimate.value);
        self.buyer_cache.insert(key, price.clone());
        Ok(price)
    }

    /// A seller's threshold: their expected value, independent of the state.
    pub fn seller_threshold(&self, seller: usize) -> &Rat {
        &self.seller_means[seller]
    }

    /// Price quoted for a trade between buyer `i` and seller `j` in state
    /// `(A_B, r)`: one third of the threshold sum.
    pub fn trade_price(
        &self,
        buyer: usize,
        seller: usize,
        served: &BTreeSet<usize>,
        rank_cap: usize,
    ) -> Result<Price, PricingError> {
        match self.buyer_threshold(buyer, served, rank_cap)? {
            Price::Blocked => Ok(Price::Blocked),
            Price::Finite(p_i) => {
                Ok(Price::Finite((p_i + &self.seller_means[seller]) / Rat::from_integer(3.into())))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Matroid market, weak budget balance
// ---------------------------------------------------------------------------

/// Prices for the online matroid double auction with buyer-side surplus.
///
/// The conditioning state is the set `A'` of agents whose prices have been
/// charged so far (sellers who kept, buyers who were served or consumed a
/// price). An agent's price is half the expected drop of the optimal
/// remaining welfare over the extended matroid when they are added to `A'`.
pub struct MatroidWbbPricing {
    instance: Arc<Instance>,
    engine: Engine,
    opt_cache: DashMap<Vec<AgentId>, Rat>,
    price_cache: DashMap<(Vec<AgentId>, AgentId), Price>,
}

impl MatroidWbbPricing {
    pub fn new(instance: Arc<Instance>, engine: Engine) -> Result<Self, PricingError> {
        matroid_of(&instance)?;
        Ok(MatroidWbbPricing {
            instance,
            engine,
            opt_cache: DashMap::new(),
            price_cache: DashMap::new(),
        })
    }

    pub fn instance(&self) -> &Arc<Instance> {
        &self.instance
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    fn matroid(&self) -> &Matroid {
        matroid_of(&self.instance).expect("validated at construction")
    }

    pub fn extended(&self) -> ExtendedMatroid<'_> {
        ExtendedMatroid::new(self.matroid(), self.instance.n_sellers())
    }

    /// Optimal addition welfare after `charged`, for one realized profile.
    pub fn realized_opt_given(&self, charged: &BTreeSet<AgentId>, values: &[Rat]) -> Rat {
        let n = self.instance.n_buyers();
        let (buyers, sellers) = values.split_at(n);
        oracle::opt_all_agents(buyers, sellers, self.matroid(), charged).1
    }

    /// Realized price of `agent` given `charged`, under one profile.
    pub fn realized_price(
        &self,
        agent: AgentId,
        charged: &BTreeSet<AgentId>,
        values: &[Rat],
    ) -> Price {
        if !self.extended().can_add(charged, agent) {
            return Price::Blocked;
        }
        let before = self.realized_opt_given(charged, values);
        let mut with = charged.clone();
        with.insert(agent);
        let after = self.realized_opt_given(&with, values);
        Price::Finite((before - after) / Rat::from_integer(2.into()))
    }

    /// Expected optimal addition welfare after `charged` (memoized).
    pub fn expected_opt_given(&self, charged: &BTreeSet<AgentId>) -> Result<Rat, PricingError> {
        let key: Vec<AgentId> = charged.iter().copied().collect();
        if let Some(hit) = self.opt_cache.get(&key) {
            return Ok(hit.clone());
        }
        let dists = all_dists(&self.instance);
        let estimate = self
            .engine
            .expect_units(&dists, |values| self.realized_opt_given(charged, values))?;
        self.opt_cache.insert(key, estimate.value.clone());
        Ok(estimate.value)
    }

    /// Expected price of `agent` given `charged`: half the expected marginal
    /// loss of remaining optimal welfare. Blocked iff the extended matroid
    /// cannot absorb the agent (dependent buyer set, or no capacity left).
    pub fn price(
        &self,
        agent: AgentId,
        charged: &BTreeSet<AgentId>,
    ) -> Result<Price, PricingError> {
        if !self.extended().can_add(charged, agent) {
            return Ok(Price::Blocked);
        }
        let key = (charged.iter().copied().collect::<Vec<_>>(), agent);
        if let Some(hit) = self.price_cache.get(&key) {
            return Ok(hit.clone());
        }
        let before = self.expected_opt_given(charged)?;
        let mut with = charged.clone();
        with.insert(agent);
        let after = self.expected_opt_given(&with)?;
        let price = Price::Finite((before - after) / Rat::from_integer(2.into()));
        self.price_cache.insert(key, price.clone());
        Ok(price)
    }
}

// ---------------------------------------------------------------------------
// Combinatorial market
// ---------------------------------------------------------------------------

/// Static anonymous item prices for the heterogeneous-item market: half the
/// expected surplus contribution of the item in the welfare-optimal
/// allocation (per-item split of each winner's realized value through its
/// supporting clause).
pub struct CombinatorialPricing {
    instance: Arc<Instance>,
    item_prices: Vec<Rat>,
}

impl CombinatorialPricing {
    pub fn new(instance: Arc<Instance>, engine: Engine) -> Result<Self, PricingError> {
        // Fail early (and with a typed error) if the exact allocation search
        // cannot handle the item count for non-additive supports.
        let any_non_additive = instance
            .buyers()
            .iter()
            .chain(instance.sellers())
            .flat_map(|d| d.support())
            .any(|(v, _)| match v {
                Valuation::Unit(_) => false,
                Valuation::Xos(x) => !x.is_additive(),
            });
        if any_non_additive && instance.n_items() > oracle::MAX_XOS_ITEMS {
            return Err(PricingError::TooManyItemsForXos {
                max: oracle::MAX_XOS_ITEMS,
                got: instance.n_items(),
            });
        }
        let m = instance.n_items();
        let contributions = engine.expect_instance_vec(&instance, m, |profile| {
            let opt = oracle::opt_combinatorial(&instance, profile)
                .expect("size checked at construction");
            oracle::sw_contribution(&instance, profile, &opt.allocation)
        })?;
        let item_prices =
            contributions.into_iter().map(|c| c / Rat::from_integer(2.into())).collect();
        Ok(CombinatorialPricing { instance, item_prices })
    }

    pub fn instance(&self) -> &Arc<Instance> {
        &self.instance
    }

    pub fn item_price(&self, item: usize) -> &Rat {
        &self.item_prices[item]
    }

    pub fn item_prices(&self) -> &[Rat] {
        &self.item_prices
    }
}

// ---------------------------------------------------------------------------
// Knapsack market
// ---------------------------------------------------------------------------

/// Inflated weight used for pricing and capacity bookkeeping: buyers weigh
/// at least one `k`-th of the capacity; in the weak regime sellers weigh
/// exactly one `k`-th. Needs at least two items.
pub fn artificial_weight(
    weight: &Rat,
    n_items: usize,
    role: Role,
    regime: BudgetRegime,
) -> Result<Rat, PricingError> {
    if n_items < 2 {
        return Err(PricingError::TooFewItems(n_items));
    }
    let floor = Rat::new(1.into(), (n_items as i64).into());
    match role {
        Role::Buyer => Ok(weight.clone().max(floor)),
        Role::Seller => match regime {
            BudgetRegime::Weak => Ok(floor),
            BudgetRegime::Strong => Err(PricingError::SellerWeightInStrongRegime),
        },
    }
}

/// Prices for the knapsack double auctions: an agent's price is their
/// artificial weight times the expected optimal welfare, scaled by 2/7 in
/// the strong regime and 2/5 in the weak regime.
pub struct KnapsackPricing {
    instance: Arc<Instance>,
    regime: BudgetRegime,
    expected_opt: Rat,
    buyer_star: Vec<Rat>,
    seller_star: Option<Rat>,
}

impl KnapsackPricing {
    pub fn new(
        instance: Arc<Instance>,
        regime: BudgetRegime,
        engine: Engine,
    ) -> Result<Self, PricingError> {
        let weights = match instance.constraint() {
            Constraint::Knapsack { weights } => weights.clone(),
            _ => return Err(PricingError::NotKnapsack),
        };
        let k = instance.n_sellers();
        if k < 2 {
            return Err(PricingError::TooFewItems(k));
        }
        let n = instance.n_buyers();
        if n > oracle::MAX_KNAPSACK_BUYERS {
            return Err(OracleError::TooManyBuyers(n).into());
        }
        let dists = all_dists(&instance);
        let expected_opt = engine
            .expect_units(&dists, |values| {
                let (buyers, sellers) = values.split_at(n);
                oracle::opt_knapsack(buyers, &weights, sellers)
                    .expect("buyer count checked before enumeration")
                    .1
            })?
            .value;
        let buyer_star = weights
            .iter()
            .map(|w| artificial_weight(w, k, Role::Buyer, regime))
            .collect::<Result<Vec<_>, _>>()?;
        let seller_star = match regime {
            BudgetRegime::Weak => {
                Some(artificial_weight(&Rat::zero(), k, Role::Seller, regime)?)
            }
            BudgetRegime::Strong => None,
        };
        Ok(KnapsackPricing { instance, regime, expected_opt, buyer_star, seller_star })
    }

    pub fn instance(&self) -> &Arc<Instance> {
        &self.instance
    }

    pub fn regime(&self) -> BudgetRegime {
        self.regime
    }

    pub fn expected_opt(&self) -> &Rat {
        &self.expected_opt
    }

    fn coefficient(&self) -> Rat {
        match self.regime {
            BudgetRegime::Strong => Rat::new(2.into(), 7.into()),
            BudgetRegime::Weak => Rat::new(2.into(), 5.into()),
        }
    }

    pub fn buyer_artificial_weight(&self, buyer: usize) -> &Rat {
        &self.buyer_star[buyer]
    }

    pub fn seller_artificial_weight(&self) -> Result<&Rat, PricingError> {
        self.seller_star.as_ref().ok_or(PricingError::SellerWeightInStrongRegime)
    }

    pub fn buyer_price(&self, buyer: usize) -> Rat {
        self.coefficient() * &self.buyer_star[buyer] * &self.expected_opt
    }

    pub fn seller_price(&self) -> Result<Rat, PricingError> {
        Ok(self.coefficient() * self.seller_artificial_weight()? * &self.expected_opt)
    }
}

// ---------------------------------------------------------------------------
// Bilateral trade
// ---------------------------------------------------------------------------

/// The single posted price of bilateral trade: half the expected welfare of
/// the better of the two parties.
pub fn bilateral_price(instance: &Instance, engine: &Engine) -> Result<Rat, PricingError> {
    if instance.n_buyers() != 1 || instance.n_sellers() != 1 {
        return Err(PricingError::NotBilateral);
    }
    let dists = all_dists(instance);
    let estimate = engine.expect_units(&dists, |values| {
        // values = [buyer, seller]
        values[0].clone().max(values[1].clone())
    })?;
    Ok(estimate.value / Rat::from_integer(2.into()))
}

/// Expected welfare of the omniscient single-item allocation, used as the
/// bilateral benchmark.
pub fn bilateral_expected_max(instance: &Instance, engine: &Engine) -> Result<Rat, PricingError> {
    if instance.n_buyers() != 1 || instance.n_sellers() != 1 {
        return Err(PricingError::NotBilateral);
    }
    let dists = all_dists(instance);
    Ok(engine
        .expect_units(&dists, |values| values[0].clone().max(values[1].clone()))?
        .value)
}

/// Convenience for harness code: every agent's scalar values in the
/// engine's `[buyers.., sellers..]` layout.
pub fn unit_values(profile: &Profile) -> (Vec<Rat>, Vec<Rat>) {
    profile.unit_values().expect("scalar market")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat, rat_int};

    fn matroid_instance(
        buyers: Vec<Distribution>,
        sellers: Vec<Distribution>,
        matroid: Matroid,
    ) -> Arc<Instance> {
        Arc::new(
            Instance::unit_market(buyers, sellers, Constraint::Matroid(matroid)).unwrap(),
        )
    }

    fn det(v: i64) -> Distribution {
        Distribution::point(rat_int(v))
    }

    #[test]
    fn price_ordering_treats_blocked_as_infinite() {
        assert!(Price::Blocked > Price::Finite(rat_int(1_000_000)));
        assert_eq!(Price::Blocked, Price::Blocked);
        assert!(Price::Finite(rat_int(1)) < Price::Finite(rat_int(2)));
        assert_eq!(Price::Blocked.to_string(), "blocked");
        assert_eq!(Price::Finite(rat(5, 3)).to_string(), "5/3");
    }

    #[test]
    fn sbb_buyer_thresholds_match_hand_computation() {
        let instance = matroid_instance(
            vec![det(5), det(3)],
            vec![det(0), det(0)],
            Matroid::uniform(2, 2).unwrap(),
        );
        let pricing = MatroidSbbPricing::new(instance, Engine::exact_default()).unwrap();
        let empty = BTreeSet::new();
        assert_eq!(pricing.buyer_threshold(0, &empty, 2).unwrap(), Price::Finite(rat_int(5)));
        assert_eq!(pricing.buyer_threshold(1, &empty, 2).unwrap(), Price::Finite(rat_int(3)));
        // One third of (5 + 0):
        assert_eq!(pricing.trade_price(0, 0, &empty, 2).unwrap(), Price::Finite(rat(5, 3)));
        // After buyer 0 is served the next trade is quoted at (3 + 0) / 3.
        let served = BTreeSet::from([0]);
        assert_eq!(pricing.trade_price(1, 0, &served, 2).unwrap(), Price::Finite(rat_int(1)));
    }

    #[test]
    fn sbb_seller_mean_enters_trade_price() {
        let instance = matroid_instance(
            vec![det(5), det(3)],
            vec![Distribution::scalar(vec![(rat_int(0), rat(1, 2)), (rat_int(2), rat(1, 2))])
                .unwrap()],
            Matroid::uniform(2, 2).unwrap(),
        );
        let pricing = MatroidSbbPricing::new(instance, Engine::exact_default()).unwrap();
        assert_eq!(pricing.seller_threshold(0), &rat_int(1));
        assert_eq!(
            pricing.trade_price(0, 0, &BTreeSet::new(), 1).unwrap(),
            Price::Finite(rat_int(2)),
        );
    }

    #[test]
    fn sbb_threshold_blocked_when_infeasible() {
        let instance = matroid_instance(
            vec![det(5), det(3)],
            vec![det(0), det(0)],
            Matroid::uniform(2, 1).unwrap(),
        );
        let pricing = MatroidSbbPricing::new(instance, Engine::exact_default()).unwrap();
        let served = BTreeSet::from([0]);
        // Buyer 1 dependent with buyer 0 under rank 1.
        assert_eq!(pricing.buyer_threshold(1, &served, 2).unwrap(), Price::Blocked);
        // Rank cap exhausted.
        assert_eq!(pricing.buyer_threshold(1, &BTreeSet::new(), 0).unwrap(), Price::Blocked);
    }

    #[test]
    fn sbb_realized_threshold_examples() {
        let instance = matroid_instance(
            vec![det(5), det(3), det(2)],
            vec![det(0), det(0)],
            Matroid::uniform(3, 3).unwrap(),
        );
        let pricing = MatroidSbbPricing::new(instance, Engine::exact_default()).unwrap();
        let values = [rat_int(5), rat_int(3), rat_int(2)];
        // Serving buyer 1 displaces the 3 from {5,3}: 8 - 5 = 3.
        assert_eq!(
            pricing.buyer_threshold_realized(1, &BTreeSet::new(), 2, &values),
            Price::Finite(rat_int(3)),
        );
    }

    #[test]
    fn wbb_prices_match_hand_computation() {
        let instance = matroid_instance(
            vec![det(5), det(3)],
            vec![det(0), det(0)],
            Matroid::uniform(2, 2).unwrap(),
        );
        let pricing = MatroidWbbPricing::new(instance, Engine::exact_default()).unwrap();
        let empty = BTreeSet::new();
        assert_eq!(pricing.expected_opt_given(&empty).unwrap(), rat_int(8));
        // Serving buyer 0 leaves {b1} as the best addition: (8 - 3) / 2.
        assert_eq!(
            pricing.price(AgentId::buyer(0), &empty).unwrap(),
            Price::Finite(rat(5, 2)),
        );
        // A seller keeping an item burns one unit of capacity: (8 - 5) / 2.
        assert_eq!(
            pricing.price(AgentId::seller(0), &empty).unwrap(),
            Price::Finite(rat(3, 2)),
        );
        // Saturated state: everything blocked.
        let full = BTreeSet::from([AgentId::seller(0), AgentId::seller(1)]);
        assert_eq!(pricing.price(AgentId::buyer(0), &full).unwrap(), Price::Blocked);
    }

    #[test]
    fn wbb_price_on_stochastic_buyer() {
        let instance = matroid_instance(
            vec![Distribution::scalar(vec![(rat_int(0), rat(1, 2)), (rat_int(10), rat(1, 2))])
                .unwrap()],
            vec![det(0)],
            Matroid::uniform(1, 1).unwrap(),
        );
        let pricing = MatroidWbbPricing::new(instance, Engine::exact_default()).unwrap();
        let empty = BTreeSet::new();
        // E[opt] = E[max(v_b, 0)] = 5; serving anyone exhausts the item.
        assert_eq!(
            pricing.price(AgentId::buyer(0), &empty).unwrap(),
            Price::Finite(rat(5, 2)),
        );
        assert_eq!(
            pricing.price(AgentId::seller(0), &empty).unwrap(),
            Price::Finite(rat(5, 2)),
        );
    }

    #[test]
    fn wbb_buyer_blocked_by_matroid_dependence() {
        let instance = matroid_instance(
            vec![det(5), det(3)],
            vec![det(0), det(0)],
            Matroid::uniform(2, 1).unwrap(),
        );
        let pricing = MatroidWbbPricing::new(instance, Engine::exact_default()).unwrap();
        let charged = BTreeSet::from([AgentId::buyer(0)]);
        assert_eq!(pricing.price(AgentId::buyer(1), &charged).unwrap(), Price::Blocked);
        // Sellers stay finite as long as capacity remains.
        assert!(!pricing.price(AgentId::seller(0), &charged).unwrap().is_blocked());
    }

    fn additive_dist(weights: Vec<(usize, i64)>) -> Distribution {
        Distribution::new(vec![(
            Valuation::Xos(
                crate::market::XosValuation::additive(
                    weights.into_iter().map(|(j, w)| (j, rat_int(w))).collect(),
                )
                .unwrap(),
            ),
            rat_int(1),
        )])
        .unwrap()
    }

    #[test]
    fn combinatorial_prices_halve_expected_item_surplus() {
        // Deterministic: seller keeps (3 beats 2) so the item's surplus is 3.
        let instance = Arc::new(
            Instance::new(
                vec![additive_dist(vec![(0, 2)])],
                vec![additive_dist(vec![(0, 3)])],
                vec!["a".into()],
                vec![BTreeSet::from([0])],
                Constraint::Unconstrained,
            )
            .unwrap(),
        );
        let pricing = CombinatorialPricing::new(instance, Engine::exact_default()).unwrap();
        assert_eq!(pricing.item_price(0), &rat(3, 2));

        // Stochastic buyer 0 or 4: surplus 0 or 4, price = E/2 = 1.
        let buyer = Distribution::new(vec![
            (
                Valuation::Xos(
                    crate::market::XosValuation::additive(
                        [(0usize, rat_int(0))].into_iter().collect(),
                    )
                    .unwrap(),
                ),
                rat(1, 2),
            ),
            (
                Valuation::Xos(
                    crate::market::XosValuation::additive(
                        [(0usize, rat_int(4))].into_iter().collect(),
                    )
                    .unwrap(),
                ),
                rat(1, 2),
            ),
        ])
        .unwrap();
        let instance = Arc::new(
            Instance::new(
                vec![buyer],
                vec![additive_dist(vec![(0, 0)])],
                vec!["a".into()],
                vec![BTreeSet::from([0])],
                Constraint::Unconstrained,
            )
            .unwrap(),
        );
        let pricing = CombinatorialPricing::new(instance, Engine::exact_default()).unwrap();
        assert_eq!(pricing.item_price(0), &rat_int(1));
    }

    fn knapsack_instance(
        buyers: Vec<(i64, Rat)>,
        sellers: Vec<i64>,
    ) -> Arc<Instance> {
        let (dists, weights): (Vec<_>, Vec<_>) =
            buyers.into_iter().map(|(v, w)| (det(v), w)).unzip();
        Arc::new(
            Instance::unit_market(
                dists,
                sellers.into_iter().map(det).collect(),
                Constraint::Knapsack { weights },
            )
            .unwrap(),
        )
    }

    #[test]
    fn artificial_weights_follow_regime_rules() {
        assert_eq!(
            artificial_weight(&rat(3, 10), 4, Role::Buyer, BudgetRegime::Strong).unwrap(),
            rat(3, 10),
        );
        assert_eq!(
            artificial_weight(&rat(1, 10), 4, Role::Buyer, BudgetRegime::Strong).unwrap(),
            rat(1, 4),
        );
        assert_eq!(
            artificial_weight(&rat(9, 10), 3, Role::Seller, BudgetRegime::Weak).unwrap(),
            rat(1, 3),
        );
        assert_eq!(
            artificial_weight(&rat(1, 2), 2, Role::Seller, BudgetRegime::Strong).unwrap_err(),
            PricingError::SellerWeightInStrongRegime,
        );
        assert_eq!(
            artificial_weight(&rat(1, 2), 1, Role::Buyer, BudgetRegime::Strong).unwrap_err(),
            PricingError::TooFewItems(1),
        );
    }

    #[test]
    fn knapsack_prices_scale_expected_opt() {
        let instance =
            knapsack_instance(vec![(10, rat(1, 2)), (6, rat(1, 2))], vec![0, 0]);
        let sbb =
            KnapsackPricing::new(instance.clone(), BudgetRegime::Strong, Engine::exact_default())
                .unwrap();
        assert_eq!(sbb.expected_opt(), &rat_int(16));
        assert_eq!(sbb.buyer_price(0), rat(16, 7)); // (2/7) * (1/2) * 16
        assert!(sbb.seller_price().is_err());

        let wbb =
            KnapsackPricing::new(instance, BudgetRegime::Weak, Engine::exact_default()).unwrap();
        assert_eq!(wbb.buyer_price(0), rat(16, 5)); // (2/5) * (1/2) * 16
        assert_eq!(wbb.seller_price().unwrap(), rat(16, 5));
    }

    #[test]
    fn bilateral_price_examples() {
        let engine = Engine::exact_default();
        let make = |s: Distribution, b: Distribution| {
            Arc::new(Instance::unit_market(vec![b], vec![s], Constraint::Unconstrained).unwrap())
        };
        assert_eq!(bilateral_price(&make(det(0), det(1)), &engine).unwrap(), rat(1, 2));
        assert_eq!(bilateral_price(&make(det(3), det(1)), &engine).unwrap(), rat(3, 2));
        let stochastic = Distribution::scalar(vec![
            (rat_int(0), rat(1, 2)),
            (rat_int(2), rat(1, 2)),
        ])
        .unwrap();
        assert_eq!(bilateral_price(&make(stochastic, det(1)), &engine).unwrap(), rat(3, 4));
    }
}
