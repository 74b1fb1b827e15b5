//! Identical-item knapsack market runs.
//!
//! Buyers carry weights that must fit a unit capacity; weights below `1/k`
//! are rounded up to an artificial weight so at most `k` agents ever fit.
//! Prices are fixed fractions of each agent's artificial weight times the
//! expected optimal welfare, so every price is known before anyone arrives.
//! The strongly balanced auction walks buyers heaviest-first against sellers
//! in index order; the weakly balanced auction lets sellers opt out first and
//! then serves buyers in adversarial order while capacity lasts.

use super::{
    choose, scalar_profile, GeneralWrapper, MappedAdversary, MechanismError, MechanismRun, RunLog,
};
use crate::market::{AgentId, Instance, OutcomeBuilder, Profile, Role};
use crate::mechanism::adversary::{Adversary, ChoiceKind};
use crate::pricing::KnapsackPricing;
use crate::pricing::Price;
use crate::rational::Rat;
use num::{One, Zero};
use std::collections::BTreeSet;

// ---------------------------------------------------------------------------
// Strong budget balance
// ---------------------------------------------------------------------------

pub(super) fn run_sbb(
    pricing: &KnapsackPricing,
    profile: &Profile,
) -> Result<MechanismRun, MechanismError> {
    let instance = pricing.instance().clone();
    let (buyer_values, seller_values) = scalar_profile(profile)?;
    let n = instance.n_buyers();
    let k = instance.n_sellers();
    let weights = match instance.constraint() {
        crate::market::Constraint::Knapsack { weights } => weights,
        _ => unreachable!("validated at prepare"),
    };

    // Heaviest original weight first, ties to the lower index.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| weights[*b].cmp(&weights[*a]).then(a.cmp(b)));

    let mut log = RunLog::default();
    let mut builder = OutcomeBuilder::new(&instance);
    let mut sold: BTreeSet<usize> = BTreeSet::new();
    let mut used = Rat::zero();
    let mut position = 0usize;
    let mut seller = 0usize;

    while position < n && seller < k {
        let buyer = order[position];
        let star = pricing.buyer_artificial_weight(buyer);
        if &used + star > Rat::one() {
            position += 1;
            continue;
        }
        let price = pricing.buyer_price(buyer);
        log.offers.push((AgentId::seller(seller), Price::Finite(price.clone())));
        if seller_values[seller] >= price {
            // Seller keeps; their slot still charges the buyer's artificial
            // weight against capacity, and the buyer waits for the next one.
            used += star;
            seller += 1;
        } else {
            log.offers.push((AgentId::buyer(buyer), Price::Finite(price.clone())));
            if buyer_values[buyer] >= price {
                builder.trade(
                    instance.sole_item(seller),
                    seller,
                    buyer,
                    price.clone(),
                    price,
                );
                sold.insert(seller);
                used += star;
                seller += 1;
            }
            position += 1;
        }
    }

    for j in 0..k {
        if !sold.contains(&j) {
            builder.keep(&instance, j);
        }
    }
    Ok(MechanismRun { outcome: builder.build(&instance)?, log })
}

// ---------------------------------------------------------------------------
// Weak budget balance
// ---------------------------------------------------------------------------

pub(super) fn run_wbb(
    pricing: &KnapsackPricing,
    profile: &Profile,
    adversary: &mut dyn Adversary,
) -> Result<MechanismRun, MechanismError> {
    let instance = pricing.instance().clone();
    let (buyer_values, seller_values) = scalar_profile(profile)?;
    let n = instance.n_buyers();
    let k = instance.n_sellers();
    let seller_price = pricing.seller_price()?;
    let seller_star = pricing.seller_artificial_weight()?.clone();

    let mut log = RunLog::default();
    let mut builder = OutcomeBuilder::new(&instance);
    let mut open_sellers: BTreeSet<usize> = BTreeSet::new();
    let mut sold: BTreeSet<usize> = BTreeSet::new();
    let mut used = Rat::zero();

    // Sellers all face the same precomputed price, so their order cannot
    // matter; walk them canonically.
    for j in 0..k {
        log.offers.push((AgentId::seller(j), Price::Finite(seller_price.clone())));
        if seller_values[j] >= seller_price {
            used += &seller_star;
        } else {
            open_sellers.insert(j);
        }
    }

    let mut pending: BTreeSet<usize> = (0..n).collect();
    while !pending.is_empty() && !open_sellers.is_empty() {
        let options: Vec<AgentId> = pending.iter().map(|&i| AgentId::buyer(i)).collect();
        let mut scores = Vec::with_capacity(options.len());
        for &candidate in &pending {
            let star = pricing.buyer_artificial_weight(candidate);
            let feasible = &used + star <= Rat::one();
            let buys = feasible && buyer_values[candidate] >= pricing.buyer_price(candidate);
            scores.push(if buys {
                // The adversary would hand over the most valuable open item.
                let worst_seller = open_sellers
                    .iter()
                    .map(|&j| &seller_values[j])
                    .max()
                    .expect("nonempty");
                &buyer_values[candidate] - worst_seller
            } else {
                Rat::zero()
            });
        }
        let picked = choose(adversary, ChoiceKind::BuyerArrival, &options, &scores);
        let buyer = options[picked].index;
        pending.remove(&buyer);

        let star = pricing.buyer_artificial_weight(buyer);
        if &used + star > Rat::one() {
            // Over capacity: the buyer is never shown a price.
            continue;
        }
        debug_assert!(!open_sellers.is_empty(), "capacity implies an open seller");
        let price = pricing.buyer_price(buyer);
        log.offers.push((AgentId::buyer(buyer), Price::Finite(price.clone())));
        if buyer_values[buyer] < price {
            continue;
        }
        let match_options: Vec<AgentId> =
            open_sellers.iter().map(|&j| AgentId::seller(j)).collect();
        let match_scores: Vec<Rat> = open_sellers
            .iter()
            .map(|&j| &buyer_values[buyer] - &seller_values[j])
            .collect();
        let picked = choose(adversary, ChoiceKind::SellerMatch, &match_options, &match_scores);
        let seller = match_options[picked].index;
        builder.trade(
            instance.sole_item(seller),
            seller,
            buyer,
            price,
            seller_price.clone(),
        );
        sold.insert(seller);
        open_sellers.remove(&seller);
        used += star;
    }

    for j in 0..k {
        if !sold.contains(&j) {
            builder.keep(&instance, j);
        }
    }
    Ok(MechanismRun { outcome: builder.build(&instance)?, log })
}

// ---------------------------------------------------------------------------
// General weights: light/heavy split
// ---------------------------------------------------------------------------

pub(super) fn run_general(
    instance: &Instance,
    wrapper: &GeneralWrapper,
    profile: &Profile,
    adversary: &mut dyn Adversary,
) -> Result<MechanismRun, MechanismError> {
    // Project the profile onto the branch's buyers and run the sub-mechanism
    // with choices surfaced under original identities.
    let sub_profile = Profile {
        buyers: wrapper.buyer_map.iter().map(|&i| profile.buyers[i].clone()).collect(),
        sellers: profile.sellers.clone(),
    };
    let mut mapped = MappedAdversary { inner: adversary, buyer_map: &wrapper.buyer_map };
    let run = wrapper.sub.run(&sub_profile, &mut mapped)?;

    // Translate the outcome and log back; excluded buyers simply end with
    // nothing. Item identifiers coincide because both are unit markets over
    // the same sellers.
    let mut builder = OutcomeBuilder::new(instance);
    for record in &run.outcome.ledger {
        builder.trade(
            record.item,
            record.seller.index,
            wrapper.buyer_map[record.buyer.index],
            record.buyer_pays.clone(),
            record.seller_receives.clone(),
        );
    }
    for seller in 0..instance.n_sellers() {
        for &item in run.outcome.bundle(AgentId::seller(seller)) {
            builder.assign(AgentId::seller(seller), item);
        }
    }
    let remap = |agent: &AgentId| match agent.role {
        Role::Buyer => AgentId::buyer(wrapper.buyer_map[agent.index]),
        Role::Seller => *agent,
    };
    let log = RunLog {
        offers: run.log.offers.iter().map(|(a, p)| (remap(a), p.clone())).collect(),
        consumed: run.log.consumed.iter().map(|(a, p)| (remap(a), p.clone())).collect(),
        branch: Some(wrapper.branch),
    };
    Ok(MechanismRun { outcome: builder.build(instance)?, log })
}
