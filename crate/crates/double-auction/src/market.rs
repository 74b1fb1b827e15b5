//! Core market model: agents, items, valuations, value distributions,
//! problem instances, and mechanism outcomes with their trade ledgers.
//!
//! Conventions used throughout the crate:
//! * agents are identified by `(role, index)` and ordered buyers-first,
//!   so "pick the lowest agent" is always well defined;
//! * every quantity is an exact rational ([`Rat`]);
//! * an outcome allocates **every** item (unsold items stay with their
//!   owners) and its signed payments are derivable from the trade ledger.

use crate::rational::{rat_sum, Rat};
use num::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MarketError {
    #[error("distribution support is empty")]
    EmptySupport,
    #[error("support value is negative")]
    NegativeValue,
    #[error("probability {0} is outside (0, 1]")]
    BadProbability(String),
    #[error("probabilities sum to {0}, expected exactly 1")]
    ProbabilitySum(String),
    #[error("combinatorial valuation has no clauses")]
    NoClauses,
    #[error("clause weight for item {0} is negative")]
    NegativeClauseWeight(usize),
    #[error("clause references unknown item index {0}")]
    UnknownItem(usize),
    #[error("seller {0} values item {1} outside its endowment")]
    ForeignItemValued(usize, usize),
    #[error("endowments do not partition the item set: item {0} owned {1} times")]
    EndowmentNotPartition(usize, usize),
    #[error("endowment list length {0} does not match seller count {1}")]
    EndowmentLength(usize, usize),
    #[error("knapsack weight for buyer {0} is outside [0, 1]")]
    WeightOutOfRange(usize),
    #[error("knapsack weight list length {0} does not match buyer count {1}")]
    WeightLength(usize, usize),
    #[error("matroid ground set size {0} does not match buyer count {1}")]
    GroundMismatch(usize, usize),
    #[error("{0} requires single-item valuations for every agent")]
    NonUnitValuation(&'static str),
    #[error("{0} requires every seller to own exactly one item")]
    NotUnitSupply(&'static str),
    #[error("instance has no sellers")]
    NoSellers,
    #[error("bundle references item index {0} outside the instance")]
    BundleOutsideInstance(usize),
    #[error("allocation does not cover item {0} exactly once (covered {1} times)")]
    AllocationNotPartition(usize, usize),
    #[error("seller {0} is allocated item {1} outside its endowment")]
    SellerForeignItem(usize, usize),
    #[error("trade record has buyer_pays < seller_receives or a negative amount")]
    BadTradeRecord,
    #[error("item {0} appears in more than one trade record")]
    ItemTradedTwice(usize),
    #[error("trade record item {0} is not allocated to the recorded buyer")]
    TradeAllocationMismatch(usize),
    #[error("payments do not match the trade ledger for agent {0}")]
    PaymentMismatch(String),
}

// ---------------------------------------------------------------------------
// Agents and items
// ---------------------------------------------------------------------------

/// Market side of an agent. Buyers order before sellers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Buyer,
    Seller,
}

/// Agent identifier: role plus zero-based index within that role.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentId {
    pub role: Role,
    pub index: usize,
}

impl AgentId {
    pub fn buyer(index: usize) -> Self {
        AgentId { role: Role::Buyer, index }
    }
    pub fn seller(index: usize) -> Self {
        AgentId { role: Role::Seller, index }
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.role {
            Role::Buyer => write!(f, "b{}", self.index),
            Role::Seller => write!(f, "s{}", self.index),
        }
    }
}

/// Item index into [`Instance::items`].
pub type ItemId = usize;

// ---------------------------------------------------------------------------
// Valuations
// ---------------------------------------------------------------------------

/// Fractionally subadditive (XOS) valuation: the max over additive clauses.
/// Items missing from a clause contribute zero to that clause.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct XosValuation {
    clauses: Vec<BTreeMap<ItemId, Rat>>,
}

impl XosValuation {
    pub fn new(clauses: Vec<BTreeMap<ItemId, Rat>>) -> Result<Self, MarketError> {
        if clauses.is_empty() {
            return Err(MarketError::NoClauses);
        }
        for clause in &clauses {
            for (&item, weight) in clause {
                if weight.is_negative() {
                    return Err(MarketError::NegativeClauseWeight(item));
                }
            }
        }
        Ok(XosValuation { clauses })
    }

    /// Additive valuation as the single-clause special case.
    pub fn additive(weights: BTreeMap<ItemId, Rat>) -> Result<Self, MarketError> {
        Self::new(vec![weights])
    }

    pub fn clauses(&self) -> &[BTreeMap<ItemId, Rat>] {
        &self.clauses
    }

    pub fn is_additive(&self) -> bool {
        self.clauses.len() == 1
    }

    fn clause_value(clause: &BTreeMap<ItemId, Rat>, bundle: &BTreeSet<ItemId>) -> Rat {
        rat_sum(bundle.iter().filter_map(|item| clause.get(item)))
    }

    pub fn value(&self, bundle: &BTreeSet<ItemId>) -> Rat {
        self.clauses
            .iter()
            .map(|c| Self::clause_value(c, bundle))
            .max()
            .expect("clauses nonempty")
    }

    /// Index of the first clause attaining `value(bundle)`, and that value.
    /// The fixed tie-break keeps downstream per-item decompositions
    /// deterministic.
    pub fn supporting_clause(&self, bundle: &BTreeSet<ItemId>) -> (usize, Rat) {
        let mut best = (0usize, Self::clause_value(&self.clauses[0], bundle));
        for (idx, clause) in self.clauses.iter().enumerate().skip(1) {
            let v = Self::clause_value(clause, bundle);
            if v > best.1 {
                best = (idx, v);
            }
        }
        best
    }

    /// Largest item index mentioned by any clause, if any.
    fn max_item(&self) -> Option<usize> {
        self.clauses.iter().filter_map(|c| c.keys().next_back().copied()).max()
    }
}

/// An agent's valuation over bundles of items.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Valuation {
    /// Value for receiving any (one or more) item; single-parameter agents.
    Unit(Rat),
    /// Bundle valuation given by XOS clauses.
    Xos(XosValuation),
}

impl Valuation {
    /// Context-free bundle value. For sellers the caller intersects the
    /// bundle with the endowment first (see [`Instance::evaluate`]).
    pub fn value(&self, bundle: &BTreeSet<ItemId>) -> Rat {
        match self {
            Valuation::Unit(v) => {
                if bundle.is_empty() {
                    Rat::zero()
                } else {
                    v.clone()
                }
            }
            Valuation::Xos(x) => x.value(bundle),
        }
    }

    /// The scalar of a single-item valuation; `None` for XOS.
    pub fn unit(&self) -> Option<&Rat> {
        match self {
            Valuation::Unit(v) => Some(v),
            Valuation::Xos(_) => None,
        }
    }
}

// ---------------------------------------------------------------------------
// Distributions
// ---------------------------------------------------------------------------

/// Finite distribution over valuations. Probabilities are rationals in
/// (0, 1] and sum to exactly 1. Scalar supports are kept sorted strictly
/// increasing (duplicates merged), which is the canonical form file
/// round-trips preserve.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Distribution {
    support: Vec<(Valuation, Rat)>,
}

impl Distribution {
    pub fn new(support: Vec<(Valuation, Rat)>) -> Result<Self, MarketError> {
        if support.is_empty() {
            return Err(MarketError::EmptySupport);
        }
        let mut total = Rat::zero();
        for (value, prob) in &support {
            if prob <= &Rat::zero() || prob > &Rat::one() {
                return Err(MarketError::BadProbability(crate::rational::format_rat(prob)));
            }
            if let Valuation::Unit(v) = value {
                if v.is_negative() {
                    return Err(MarketError::NegativeValue);
                }
            }
            total += prob;
        }
        if !total.is_one() {
            return Err(MarketError::ProbabilitySum(crate::rational::format_rat(&total)));
        }
        let all_unit = support.iter().all(|(v, _)| matches!(v, Valuation::Unit(_)));
        if all_unit {
            // Canonicalize scalar supports: sort by value, merge duplicates.
            let mut scalar: Vec<(Rat, Rat)> = support
                .into_iter()
                .map(|(v, p)| match v {
                    Valuation::Unit(v) => (v, p),
                    Valuation::Xos(_) => unreachable!(),
                })
                .collect();
            scalar.sort_by(|a, b| a.0.cmp(&b.0));
            let mut merged: Vec<(Rat, Rat)> = Vec::with_capacity(scalar.len());
            for (v, p) in scalar {
                match merged.last_mut() {
                    Some(last) if last.0 == v => last.1 += p,
                    _ => merged.push((v, p)),
                }
            }
            Ok(Distribution {
                support: merged.into_iter().map(|(v, p)| (Valuation::Unit(v), p)).collect(),
            })
        } else {
            Ok(Distribution { support })
        }
    }

    /// Point mass on a scalar value.
    pub fn point(value: Rat) -> Self {
        Distribution { support: vec![(Valuation::Unit(value), Rat::one())] }
    }

    /// Scalar distribution from `(value, probability)` pairs.
    pub fn scalar(pairs: Vec<(Rat, Rat)>) -> Result<Self, MarketError> {
        Self::new(pairs.into_iter().map(|(v, p)| (Valuation::Unit(v), p)).collect())
    }

    pub fn support(&self) -> &[(Valuation, Rat)] {
        &self.support
    }

    pub fn support_len(&self) -> usize {
        self.support.len()
    }

    pub fn is_unit(&self) -> bool {
        self.support.iter().all(|(v, _)| matches!(v, Valuation::Unit(_)))
    }

    /// Exact mean of a scalar distribution; `None` if any support point is XOS.
    pub fn unit_mean(&self) -> Option<Rat> {
        let mut acc = Rat::zero();
        for (v, p) in &self.support {
            acc += v.unit()? * p;
        }
        Some(acc)
    }

    /// Draw one support point using the supplied RNG (cumulative-probability
    /// walk; thresholds compared in `f64`, which is fine for sampling).
    pub fn sample_ref(&self, rng: &mut impl Rng) -> &Valuation {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (v, p) in &self.support {
            acc += crate::rational::rat_to_f64(p);
            if u < acc {
                return v;
            }
        }
        &self.support.last().expect("support nonempty").0
    }
}

// ---------------------------------------------------------------------------
// Instances
// ---------------------------------------------------------------------------

/// Feasibility constraint on the buyer side.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Constraint {
    /// Buyers who receive an item must form an independent set.
    Matroid(crate::matroid::Matroid),
    /// Served buyers' weights must fit in a capacity-1 knapsack.
    Knapsack { weights: Vec<Rat> },
    /// No cross-buyer constraint (bilateral trade, combinatorial markets).
    Unconstrained,
}

/// A two-sided market: buyer and seller value distributions, the item set,
/// who initially owns what, and the buyer-side feasibility constraint.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    buyers: Vec<Distribution>,
    sellers: Vec<Distribution>,
    items: Vec<String>,
    endowment: Vec<BTreeSet<ItemId>>,
    constraint: Constraint,
}

impl Instance {
    pub fn new(
        buyers: Vec<Distribution>,
        sellers: Vec<Distribution>,
        items: Vec<String>,
        endowment: Vec<BTreeSet<ItemId>>,
        constraint: Constraint,
    ) -> Result<Self, MarketError> {
        if sellers.is_empty() {
            return Err(MarketError::NoSellers);
        }
        if endowment.len() != sellers.len() {
            return Err(MarketError::EndowmentLength(endowment.len(), sellers.len()));
        }
        let m = items.len();
        let mut owners = vec![0usize; m];
        for bundle in &endowment {
            for &item in bundle {
                if item >= m {
                    return Err(MarketError::UnknownItem(item));
                }
                owners[item] += 1;
            }
        }
        for (item, &count) in owners.iter().enumerate() {
            if count != 1 {
                return Err(MarketError::EndowmentNotPartition(item, count));
            }
        }
        for dist in buyers.iter().chain(sellers.iter()) {
            for (valuation, _) in dist.support() {
                if let Valuation::Xos(x) = valuation {
                    if let Some(max_item) = x.max_item() {
                        if max_item >= m {
                            return Err(MarketError::UnknownItem(max_item));
                        }
                    }
                }
            }
        }
        // Sellers only value their own items.
        for (l, dist) in sellers.iter().enumerate() {
            for (valuation, _) in dist.support() {
                if let Valuation::Xos(x) = valuation {
                    for clause in x.clauses() {
                        for &item in clause.keys() {
                            if !endowment[l].contains(&item) {
                                return Err(MarketError::ForeignItemValued(l, item));
                            }
                        }
                    }
                }
            }
        }
        let instance = Instance { buyers, sellers, items, endowment, constraint };
        match &instance.constraint {
            Constraint::Matroid(matroid) => {
                if matroid.ground_size() != instance.buyers.len() {
                    return Err(MarketError::GroundMismatch(
                        matroid.ground_size(),
                        instance.buyers.len(),
                    ));
                }
                instance.require_unit_market("a matroid market")?;
            }
            Constraint::Knapsack { weights } => {
                if weights.len() != instance.buyers.len() {
                    return Err(MarketError::WeightLength(weights.len(), instance.buyers.len()));
                }
                for (i, w) in weights.iter().enumerate() {
                    if w.is_negative() || w > &Rat::one() {
                        return Err(MarketError::WeightOutOfRange(i));
                    }
                }
                instance.require_unit_market("a knapsack market")?;
            }
            Constraint::Unconstrained => {}
        }
        Ok(instance)
    }

    /// Markets with identical items: every seller owns exactly one item and
    /// every valuation is single-parameter.
    fn require_unit_market(&self, what: &'static str) -> Result<(), MarketError> {
        for bundle in &self.endowment {
            if bundle.len() != 1 {
                return Err(MarketError::NotUnitSupply(what));
            }
        }
        for dist in self.buyers.iter().chain(self.sellers.iter()) {
            if !dist.is_unit() {
                return Err(MarketError::NonUnitValuation(what));
            }
        }
        Ok(())
    }

    /// Convenience constructor for identical-item markets: seller `j` owns
    /// the auto-named item `s{j}`.
    pub fn unit_market(
        buyers: Vec<Distribution>,
        sellers: Vec<Distribution>,
        constraint: Constraint,
    ) -> Result<Self, MarketError> {
        let items: Vec<String> = (0..sellers.len()).map(|j| format!("s{j}")).collect();
        let endowment = (0..sellers.len()).map(|j| BTreeSet::from([j])).collect();
        Instance::new(buyers, sellers, items, endowment, constraint)
    }

    pub fn buyers(&self) -> &[Distribution] {
        &self.buyers
    }
    pub fn sellers(&self) -> &[Distribution] {
        &self.sellers
    }
    pub fn n_buyers(&self) -> usize {
        self.buyers.len()
    }
    pub fn n_sellers(&self) -> usize {
        self.sellers.len()
    }
    pub fn items(&self) -> &[String] {
        &self.items
    }
    pub fn n_items(&self) -> usize {
        self.items.len()
    }
    pub fn endowment(&self, seller: usize) -> &BTreeSet<ItemId> {
        &self.endowment[seller]
    }
    pub fn constraint(&self) -> &Constraint {
        &self.constraint
    }

    /// The single item of a unit-supply seller.
    pub fn sole_item(&self, seller: usize) -> ItemId {
        debug_assert_eq!(self.endowment[seller].len(), 1);
        *self.endowment[seller].iter().next().expect("unit supply")
    }

    pub fn distribution(&self, agent: AgentId) -> &Distribution {
        match agent.role {
            Role::Buyer => &self.buyers[agent.index],
            Role::Seller => &self.sellers[agent.index],
        }
    }

    /// All agents in canonical order (buyers by index, then sellers).
    pub fn agents(&self) -> impl Iterator<Item = AgentId> + '_ {
        (0..self.buyers.len())
            .map(AgentId::buyer)
            .chain((0..self.sellers.len()).map(AgentId::seller))
    }

    /// Value of `bundle` to `agent` under `profile`; sellers only derive
    /// value from their own endowment. Errors on items outside the instance.
    pub fn evaluate(
        &self,
        agent: AgentId,
        bundle: &BTreeSet<ItemId>,
        profile: &Profile,
    ) -> Result<Rat, MarketError> {
        if let Some(&bad) = bundle.iter().find(|&&i| i >= self.items.len()) {
            return Err(MarketError::BundleOutsideInstance(bad));
        }
        let valuation = profile.get(agent);
        Ok(match agent.role {
            Role::Buyer => valuation.value(bundle),
            Role::Seller => {
                let own: BTreeSet<ItemId> =
                    bundle.intersection(&self.endowment[agent.index]).copied().collect();
                valuation.value(&own)
            }
        })
    }

    /// Draws one valuation per agent (canonical agent order, ChaCha-seeded,
    /// reproducible across platforms).
    pub fn sample_profile(&self, seed: u64) -> Profile {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Profile {
            buyers: self.buyers.iter().map(|d| d.sample_ref(&mut rng).clone()).collect(),
            sellers: self.sellers.iter().map(|d| d.sample_ref(&mut rng).clone()).collect(),
        }
    }
}

/// One realized valuation per agent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Profile {
    pub buyers: Vec<Valuation>,
    pub sellers: Vec<Valuation>,
}

impl Profile {
    pub fn get(&self, agent: AgentId) -> &Valuation {
        match agent.role {
            Role::Buyer => &self.buyers[agent.index],
            Role::Seller => &self.sellers[agent.index],
        }
    }

    pub fn set(&mut self, agent: AgentId, valuation: Valuation) {
        match agent.role {
            Role::Buyer => self.buyers[agent.index] = valuation,
            Role::Seller => self.sellers[agent.index] = valuation,
        }
    }

    /// Scalar views for identical-item markets; `None` if any agent is XOS.
    pub fn unit_values(&self) -> Option<(Vec<Rat>, Vec<Rat>)> {
        let buyers: Option<Vec<Rat>> = self.buyers.iter().map(|v| v.unit().cloned()).collect();
        let sellers: Option<Vec<Rat>> = self.sellers.iter().map(|v| v.unit().cloned()).collect();
        Some((buyers?, sellers?))
    }
}

// ---------------------------------------------------------------------------
// Outcomes
// ---------------------------------------------------------------------------

/// One executed trade: `item` moved from `seller` to `buyer`. Strong budget
/// balance is `buyer_pays == seller_receives` on every record; weak budget
/// balance is `buyer_pays >= seller_receives`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TradeRecord {
    pub item: ItemId,
    pub seller: AgentId,
    pub buyer: AgentId,
    pub buyer_pays: Rat,
    pub seller_receives: Rat,
}

/// Final allocation, signed payments (negative = pays), and the trade ledger
/// the payments are derived from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub allocation: BTreeMap<AgentId, BTreeSet<ItemId>>,
    pub payments: BTreeMap<AgentId, Rat>,
    pub ledger: Vec<TradeRecord>,
}

impl Outcome {
    pub fn bundle(&self, agent: AgentId) -> &BTreeSet<ItemId> {
        &self.allocation[&agent]
    }

    pub fn payment(&self, agent: AgentId) -> &Rat {
        &self.payments[&agent]
    }

    /// Checks all structural invariants against the instance: the allocation
    /// partitions the item set, sellers hold only their own items, ledger
    /// amounts are sane, no item trades twice, traded items sit with their
    /// buyers, and payments reconstruct exactly from the ledger.
    pub fn validate(&self, instance: &Instance) -> Result<(), MarketError> {
        let m = instance.n_items();
        let mut holders = vec![0usize; m];
        for (agent, bundle) in &self.allocation {
            for &item in bundle {
                if item >= m {
                    return Err(MarketError::BundleOutsideInstance(item));
                }
                holders[item] += 1;
                if agent.role == Role::Seller && !instance.endowment(agent.index).contains(&item) {
                    return Err(MarketError::SellerForeignItem(agent.index, item));
                }
            }
        }
        for (item, &count) in holders.iter().enumerate() {
            if count != 1 {
                return Err(MarketError::AllocationNotPartition(item, count));
            }
        }
        let mut traded = BTreeSet::new();
        for record in &self.ledger {
            if record.seller_receives.is_negative()
                || record.buyer_pays < record.seller_receives
            {
                return Err(MarketError::BadTradeRecord);
            }
            if !traded.insert(record.item) {
                return Err(MarketError::ItemTradedTwice(record.item));
            }
            if !self.allocation.get(&record.buyer).is_some_and(|b| b.contains(&record.item)) {
                return Err(MarketError::TradeAllocationMismatch(record.item));
            }
        }
        for agent in instance.agents() {
            let expected = match agent.role {
                Role::Buyer => -rat_sum(
                    self.ledger.iter().filter(|r| r.buyer == agent).map(|r| &r.buyer_pays),
                ),
                Role::Seller => rat_sum(
                    self.ledger.iter().filter(|r| r.seller == agent).map(|r| &r.seller_receives),
                ),
            };
            let actual = self.payments.get(&agent).cloned().unwrap_or_else(Rat::zero);
            if actual != expected {
                return Err(MarketError::PaymentMismatch(agent.to_string()));
            }
        }
        Ok(())
    }
}

/// Incrementally records keeps and trades, then derives payments from the
/// ledger so the reconstruction invariant holds by construction.
pub struct OutcomeBuilder {
    allocation: BTreeMap<AgentId, BTreeSet<ItemId>>,
    ledger: Vec<TradeRecord>,
}

impl OutcomeBuilder {
    pub fn new(instance: &Instance) -> Self {
        OutcomeBuilder {
            allocation: instance.agents().map(|a| (a, BTreeSet::new())).collect(),
            ledger: Vec::new(),
        }
    }

    /// Assign `item` to `agent` with no money moving (seller keeps, or a
    /// leftover item returns to its owner).
    pub fn assign(&mut self, agent: AgentId, item: ItemId) {
        self.allocation.get_mut(&agent).expect("known agent").insert(item);
    }

    /// Seller keeps their single item (identical-item markets).
    pub fn keep(&mut self, instance: &Instance, seller: usize) {
        self.assign(AgentId::seller(seller), instance.sole_item(seller));
    }

    /// Execute a trade and append its ledger record.
    pub fn trade(
        &mut self,
        item: ItemId,
        seller: usize,
        buyer: usize,
        buyer_pays: Rat,
        seller_receives: Rat,
    ) {
        let buyer = AgentId::buyer(buyer);
        let seller = AgentId::seller(seller);
        self.allocation.get_mut(&buyer).expect("known agent").insert(item);
        self.ledger.push(TradeRecord { item, seller, buyer, buyer_pays, seller_receives });
    }

    /// Finish and validate against the instance.
    pub fn build(self, instance: &Instance) -> Result<Outcome, MarketError> {
        let mut payments: BTreeMap<AgentId, Rat> =
            instance.agents().map(|a| (a, Rat::zero())).collect();
        for record in &self.ledger {
            *payments.get_mut(&record.buyer).expect("known buyer") -= &record.buyer_pays;
            *payments.get_mut(&record.seller).expect("known seller") += &record.seller_receives;
        }
        let outcome = Outcome { allocation: self.allocation, payments, ledger: self.ledger };
        outcome.validate(instance)?;
        Ok(outcome)
    }
}

// ---------------------------------------------------------------------------
// Welfare and utility
// ---------------------------------------------------------------------------

/// Social welfare: the sum of every agent's value for their final bundle.
pub fn welfare(instance: &Instance, outcome: &Outcome, profile: &Profile) -> Rat {
    let mut total = Rat::zero();
    for agent in instance.agents() {
        total += instance
            .evaluate(agent, outcome.bundle(agent), profile)
            .expect("validated outcome stays inside the instance");
    }
    total
}

/// Quasi-linear utility: bundle value plus the signed payment (buyers paid
/// money out, sellers took money in).
pub fn utility(instance: &Instance, agent: AgentId, outcome: &Outcome, profile: &Profile) -> Rat {
    instance
        .evaluate(agent, outcome.bundle(agent), profile)
        .expect("validated outcome stays inside the instance")
        + outcome.payment(agent)
}
