//! Heterogeneous-item market with per-item posted prices.
//!
//! Each item is priced at half its expected contribution to optimal welfare.
//! Sellers first decide item by item whether to keep (prices are static, so
//! their order is immaterial); buyers then arrive in adversarial order and
//! each takes a utility-maximizing bundle of whatever is still available,
//! paying the item prices straight through to the owners.

use super::{choose, MechanismError, MechanismRun, RunLog};
use crate::market::{AgentId, Instance, ItemId, OutcomeBuilder, Profile, Valuation};
use crate::mechanism::adversary::{Adversary, ChoiceKind};
use crate::pricing::{CombinatorialPricing, Price};
use crate::rational::Rat;
use num::Zero;
use std::collections::BTreeSet;

/// Utility-maximizing bundle from `pool` at the posted prices. Scanning
/// subsets smallest-first and keeping only strict improvements makes the pick
/// canonical: the smallest, lexicographically first maximizer.
pub(crate) fn demand(
    valuation: &Valuation,
    pool: &BTreeSet<ItemId>,
    prices: &[Rat],
) -> BTreeSet<ItemId> {
    if let Valuation::Xos(xos) = valuation {
        if xos.is_additive() {
            // Additive values separate per item: the canonical maximizer is
            // exactly the strictly-positive-margin items.
            let clause = &xos.clauses()[0];
            return pool
                .iter()
                .filter(|j| clause.get(j).is_some_and(|w| w > &prices[**j]))
                .copied()
                .collect();
        }
    }
    let items: Vec<ItemId> = pool.iter().copied().collect();
    let mut subsets: Vec<BTreeSet<ItemId>> = (0u32..1 << items.len())
        .map(|mask| {
            items
                .iter()
                .enumerate()
                .filter(|(pos, _)| mask >> pos & 1 == 1)
                .map(|(_, &j)| j)
                .collect()
        })
        .collect();
    subsets.sort_by_cached_key(|s| (s.len(), s.iter().copied().collect::<Vec<_>>()));

    let mut best = BTreeSet::new();
    let mut best_utility = Rat::zero();
    for subset in subsets {
        let cost: Rat = subset.iter().map(|&j| prices[j].clone()).sum();
        let utility = valuation.value(&subset) - cost;
        if utility > best_utility {
            best_utility = utility;
            best = subset;
        }
    }
    best
}

/// Welfare change if `buyer` arrived now: their value for the bundle they
/// would take, minus what the owners lose by parting with those items.
fn arrival_delta(
    instance: &Instance,
    pricing: &CombinatorialPricing,
    profile: &Profile,
    owner: &[usize],
    pool: &BTreeSet<ItemId>,
    buyer: usize,
) -> Result<Rat, MechanismError> {
    let bundle = demand(profile.get(AgentId::buyer(buyer)), pool, pricing.item_prices());
    let gain = instance.evaluate(AgentId::buyer(buyer), &bundle, profile)?;
    let mut loss = Rat::zero();
    for &item in &bundle {
        loss += instance.evaluate(
            AgentId::seller(owner[item]),
            &BTreeSet::from([item]),
            profile,
        )?;
    }
    Ok(gain - loss)
}

pub(super) fn run(
    pricing: &CombinatorialPricing,
    profile: &Profile,
    adversary: &mut dyn Adversary,
) -> Result<MechanismRun, MechanismError> {
    let instance = pricing.instance().clone();
    let n = instance.n_buyers();
    let k = instance.n_sellers();
    let mut owner = vec![0usize; instance.n_items()];
    for seller in 0..k {
        for &item in instance.endowment(seller) {
            owner[item] = seller;
        }
    }

    let mut pool: BTreeSet<ItemId> = BTreeSet::new();
    let mut log = RunLog::default();
    let mut builder = OutcomeBuilder::new(&instance);

    // Sellers decide item by item against the static prices.
    for seller in 0..k {
        for &item in instance.endowment(seller) {
            let price = pricing.item_price(item);
            log.offers.push((AgentId::seller(seller), Price::Finite(price.clone())));
            let keep_value =
                instance.evaluate(AgentId::seller(seller), &BTreeSet::from([item]), profile)?;
            if keep_value > *price {
                builder.assign(AgentId::seller(seller), item);
            } else {
                pool.insert(item);
            }
        }
    }

    // Buyers arrive in adversarial order and shop from the pool.
    let mut pending: BTreeSet<usize> = (0..n).collect();
    while !pending.is_empty() && !pool.is_empty() {
        let options: Vec<AgentId> = pending.iter().map(|&i| AgentId::buyer(i)).collect();
        let mut scores = Vec::with_capacity(options.len());
        for &candidate in &pending {
            scores.push(arrival_delta(&instance, pricing, profile, &owner, &pool, candidate)?);
        }
        let picked = choose(adversary, ChoiceKind::BuyerArrival, &options, &scores);
        let buyer = options[picked].index;
        pending.remove(&buyer);

        for &item in &pool {
            log.offers.push((AgentId::buyer(buyer), Price::Finite(pricing.item_price(item).clone())));
        }
        let bundle = demand(profile.get(AgentId::buyer(buyer)), &pool, pricing.item_prices());
        for &item in &bundle {
            let price = pricing.item_price(item).clone();
            builder.trade(item, owner[item], buyer, price.clone(), price);
            pool.remove(&item);
        }
    }

    // Whatever nobody bought returns to its owner free of charge.
    for &item in &pool {
        builder.assign(AgentId::seller(owner[item]), item);
    }
    Ok(MechanismRun { outcome: builder.build(&instance)?, log })
}

#[cfg(test)]
mod tests {
    use super::super::{run_combinatorial, CanonicalOrder, Mechanism, MechanismError};
    use super::*;
    use crate::engine::Engine;
    use crate::market::{welfare, Constraint, Distribution, XosValuation};
    use crate::rational::{rat, rat_int};
    use std::collections::BTreeMap;
    use std::sync::Arc;

    fn additive(weights: &[(ItemId, i64)]) -> Valuation {
        Valuation::Xos(
            XosValuation::additive(
                weights.iter().map(|&(j, w)| (j, rat_int(w))).collect::<BTreeMap<_, _>>(),
            )
            .unwrap(),
        )
    }

    fn xos(clauses: &[&[(ItemId, i64)]]) -> Valuation {
        Valuation::Xos(
            XosValuation::new(
                clauses
                    .iter()
                    .map(|c| c.iter().map(|&(j, w)| (j, rat_int(w))).collect::<BTreeMap<_, _>>())
                    .collect(),
            )
            .unwrap(),
        )
    }

    fn point(v: Valuation) -> Distribution {
        Distribution::new(vec![(v, rat_int(1))]).unwrap()
    }

    #[test]
    fn single_item_market_trades_at_half_expected_welfare() {
        // Seller worthless, buyer at 4: the item's expected optimal-welfare
        // contribution is 4, so it is priced at 2 and trades.
        let instance = Arc::new(
            Instance::new(
                vec![point(additive(&[(0, 4)]))],
                vec![point(additive(&[(0, 0)]))],
                vec!["x".into()],
                vec![BTreeSet::from([0])],
                Constraint::Unconstrained,
            )
            .unwrap(),
        );
        let profile = Profile {
            buyers: vec![additive(&[(0, 4)])],
            sellers: vec![additive(&[(0, 0)])],
        };
        let run =
            run_combinatorial(&instance, &profile, &mut CanonicalOrder, Engine::exact_default())
                .unwrap();
        assert_eq!(run.outcome.ledger.len(), 1);
        assert_eq!(run.outcome.ledger[0].buyer_pays, rat_int(2));
        assert_eq!(run.outcome.ledger[0].seller_receives, rat_int(2));
        assert_eq!(welfare(&instance, &run.outcome, &profile), rat_int(4));
    }

    #[test]
    fn additive_two_item_seller_splits_keep_and_sell() {
        // Seller additive (3, 1), buyer additive (2, 5). Optimal welfare puts
        // item 0 with the seller and item 1 with the buyer, so the prices are
        // (3/2, 5/2); the seller keeps item 0 and the buyer takes item 1.
        let instance = Arc::new(
            Instance::new(
                vec![point(additive(&[(0, 2), (1, 5)]))],
                vec![point(additive(&[(0, 3), (1, 1)]))],
                vec!["a".into(), "b".into()],
                vec![BTreeSet::from([0, 1])],
                Constraint::Unconstrained,
            )
            .unwrap(),
        );
        let profile = Profile {
            buyers: vec![additive(&[(0, 2), (1, 5)])],
            sellers: vec![additive(&[(0, 3), (1, 1)])],
        };
        let prepared = Mechanism::Combinatorial.prepare(&instance, Engine::exact_default()).unwrap();
        let run = prepared.run_canonical(&profile).unwrap();
        assert_eq!(run.outcome.ledger.len(), 1);
        assert_eq!(run.outcome.ledger[0].item, 1);
        assert_eq!(run.outcome.ledger[0].buyer_pays, rat(5, 2));
        assert_eq!(run.outcome.bundle(AgentId::seller(0)), &BTreeSet::from([0]));
        assert_eq!(welfare(&instance, &run.outcome, &profile), rat_int(8));
    }

    #[test]
    fn xos_buyer_takes_best_margin_bundle() {
        // Unit-demand buyer: 5 for item 0 or 3 for item 1. Optimal welfare
        // serves item 0, pricing it 5/2 and item 1 at 0. At those prices the
        // margin on item 1 (3) beats item 0 (5/2), so that is the purchase.
        let instance = Arc::new(
            Instance::new(
                vec![point(xos(&[&[(0, 5)], &[(1, 3)]]))],
                vec![point(additive(&[(0, 0)])), point(additive(&[(1, 0)]))],
                vec!["a".into(), "b".into()],
                vec![BTreeSet::from([0]), BTreeSet::from([1])],
                Constraint::Unconstrained,
            )
            .unwrap(),
        );
        let profile = Profile {
            buyers: vec![xos(&[&[(0, 5)], &[(1, 3)]])],
            sellers: vec![additive(&[(0, 0)]), additive(&[(1, 0)])],
        };
        let run =
            run_combinatorial(&instance, &profile, &mut CanonicalOrder, Engine::exact_default())
                .unwrap();
        assert_eq!(run.outcome.ledger.len(), 1);
        assert_eq!(run.outcome.ledger[0].item, 1);
        assert_eq!(run.outcome.ledger[0].buyer_pays, rat_int(0));
        // Item 0 found no taker and returned to its seller.
        assert_eq!(run.outcome.bundle(AgentId::seller(0)), &BTreeSet::from([0]));
        assert_eq!(welfare(&instance, &run.outcome, &profile), rat_int(3));
    }

    #[test]
    fn demand_prefers_smaller_bundles_on_ties() {
        // Zero-margin items are left behind: with value 2 and price 2 on both
        // items, buying nothing ties buying anything, and the scan keeps the
        // empty bundle.
        let valuation = additive(&[(0, 2), (1, 2)]);
        let pool = BTreeSet::from([0, 1]);
        let picked = demand(&valuation, &pool, &[rat_int(2), rat_int(2)]);
        assert!(picked.is_empty());
        // The general scan agrees with the additive fast path.
        let unit = xos(&[&[(0, 2)], &[(1, 2)]]);
        let picked = demand(&unit, &pool, &[rat_int(1), rat_int(2)]);
        assert_eq!(picked, BTreeSet::from([0]));
    }

    #[test]
    fn rejects_scalar_valuations() {
        let instance = Arc::new(
            Instance::unit_market(
                vec![Distribution::point(rat_int(3))],
                vec![Distribution::point(rat_int(0))],
                Constraint::Unconstrained,
            )
            .unwrap(),
        );
        let err = Mechanism::Combinatorial
            .prepare(&instance, Engine::exact_default())
            .unwrap_err();
        assert!(matches!(err, MechanismError::Incompatible { .. }));
    }

    #[test]
    fn rejects_multi_item_sellers_with_non_additive_values() {
        let instance = Arc::new(
            Instance::new(
                vec![point(xos(&[&[(0, 5), (1, 2)], &[(1, 3)]]))],
                vec![point(additive(&[(0, 0), (1, 0)]))],
                vec!["a".into(), "b".into()],
                vec![BTreeSet::from([0, 1])],
                Constraint::Unconstrained,
            )
            .unwrap(),
        );
        let err = Mechanism::Combinatorial
            .prepare(&instance, Engine::exact_default())
            .unwrap_err();
        assert!(matches!(err, MechanismError::Incompatible { .. }));
    }
}
