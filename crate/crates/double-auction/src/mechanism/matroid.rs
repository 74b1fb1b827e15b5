//! Identical-item matroid market runs.
//!
//! Both mechanisms post prices derived from expected marginal welfare. The
//! strongly balanced auction repeatedly pairs the cheapest remaining seller
//! with the highest-threshold remaining buyer and trades at a third of the
//! pair's combined price, paid directly buyer-to-seller. The weakly balanced
//! auction charges each served buyer their own marginal price and pays the
//! matched seller the seller's standing tag, banking the difference.

use super::{choose, scalar_profile, MechanismError, MechanismRun, RunLog};
use crate::market::{AgentId, OutcomeBuilder};
use crate::mechanism::adversary::{Adversary, ChoiceKind};
use crate::pricing::{MatroidSbbPricing, MatroidWbbPricing, Price};
use crate::rational::{rat, Rat};
use num::Zero;
use std::collections::BTreeSet;

// ---------------------------------------------------------------------------
// Strong budget balance
// ---------------------------------------------------------------------------

pub(super) fn run_sbb(
    pricing: &MatroidSbbPricing,
    profile: &crate::market::Profile,
) -> Result<MechanismRun, MechanismError> {
    let instance = pricing.instance().clone();
    let (buyer_values, seller_values) = scalar_profile(profile)?;
    let n = instance.n_buyers();
    let k = instance.n_sellers();

    let mut served: BTreeSet<usize> = BTreeSet::new();
    let mut rank_cap = k;
    let mut remaining_buyers: BTreeSet<usize> = (0..n).collect();
    let mut remaining_sellers: BTreeSet<usize> = (0..k).collect();
    let mut sold: BTreeSet<usize> = BTreeSet::new();
    let mut log = RunLog::default();
    let mut builder = OutcomeBuilder::new(&instance);

    while !remaining_buyers.is_empty() && !remaining_sellers.is_empty() {
        // Cheapest remaining seller by expected value; ties to the lowest
        // index so the pairing is deterministic.
        let seller = *remaining_sellers
            .iter()
            .min_by(|a, b| pricing.seller_threshold(**a).cmp(pricing.seller_threshold(**b)))
            .expect("nonempty");

        // Highest-threshold remaining buyer; blocked buyers sort above every
        // finite threshold so they surface here and get removed.
        let mut best: Option<(usize, Price)> = None;
        for &buyer in &remaining_buyers {
            let threshold = pricing.buyer_threshold(buyer, &served, rank_cap)?;
            if best.as_ref().is_none_or(|(_, held)| threshold > *held) {
                best = Some((buyer, threshold));
            }
        }
        let (buyer, threshold) = best.expect("nonempty");
        let Price::Finite(buyer_price) = threshold else {
            remaining_buyers.remove(&buyer);
            continue;
        };

        let pair_price = (buyer_price + pricing.seller_threshold(seller)) / rat(3, 1);
        log.offers.push((AgentId::seller(seller), Price::Finite(pair_price.clone())));
        log.offers.push((AgentId::buyer(buyer), Price::Finite(pair_price.clone())));

        if seller_values[seller] > pair_price {
            // Seller's value beats the price: they keep the item for good and
            // the market shrinks by one unit of capacity.
            remaining_sellers.remove(&seller);
            rank_cap -= 1;
        } else {
            remaining_buyers.remove(&buyer);
            if buyer_values[buyer] > pair_price {
                builder.trade(
                    instance.sole_item(seller),
                    seller,
                    buyer,
                    pair_price.clone(),
                    pair_price,
                );
                sold.insert(seller);
                served.insert(buyer);
                remaining_sellers.remove(&seller);
            }
        }
    }

    for seller in 0..k {
        if !sold.contains(&seller) {
            builder.keep(&instance, seller);
        }
    }
    Ok(MechanismRun { outcome: builder.build(&instance)?, log })
}

// ---------------------------------------------------------------------------
// Weak budget balance
// ---------------------------------------------------------------------------

/// What processing buyer `buyer` against seller `seller` would do right now.
enum Step {
    /// Blocked or priced out: nothing changes.
    BuyerPasses,
    /// Price at or above the tag: trade, buyer pays the price, seller
    /// receives the tag.
    TradeAtTag { price: Rat },
    /// Price below the tag and the seller's value covers it: the seller keeps
    /// the item but the buyer's price slot is consumed.
    SellerKeeps { price: Rat },
    /// Price below the tag, seller priced out, buyer takes it: trade with
    /// both legs at the buyer's price.
    TradeAtPrice { price: Rat },
    /// Price below the tag and nobody bites: the tag drops to the price.
    TagDrops { price: Rat },
}

fn classify(
    pricing: &MatroidWbbPricing,
    conditioned: &BTreeSet<AgentId>,
    tag: &Rat,
    buyer_value: &Rat,
    seller_value: &Rat,
    buyer: usize,
) -> Result<Step, MechanismError> {
    let price = pricing.price(AgentId::buyer(buyer), conditioned)?;
    Ok(match price {
        Price::Blocked => Step::BuyerPasses,
        Price::Finite(price) if price >= *tag => {
            if buyer_value >= &price {
                Step::TradeAtTag { price }
            } else {
                Step::BuyerPasses
            }
        }
        Price::Finite(price) => {
            if seller_value >= &price {
                Step::SellerKeeps { price }
            } else if buyer_value >= &price {
                Step::TradeAtPrice { price }
            } else {
                Step::TagDrops { price }
            }
        }
    })
}

fn step_welfare(step: &Step, buyer_value: &Rat, seller_value: &Rat) -> Rat {
    // Relative to the "everyone unsold keeps" baseline, only an executed
    // trade moves welfare.
    match step {
        Step::TradeAtTag { .. } | Step::TradeAtPrice { .. } => buyer_value - seller_value,
        _ => Rat::zero(),
    }
}

pub(super) fn run_wbb(
    pricing: &MatroidWbbPricing,
    profile: &crate::market::Profile,
    adversary: &mut dyn Adversary,
) -> Result<MechanismRun, MechanismError> {
    let instance = pricing.instance().clone();
    let (buyer_values, seller_values) = scalar_profile(profile)?;
    let n = instance.n_buyers();
    let k = instance.n_sellers();

    let mut conditioned: BTreeSet<AgentId> = BTreeSet::new();
    let mut tags: Vec<Option<Rat>> = vec![None; k];
    let mut open_sellers: BTreeSet<usize> = BTreeSet::new();
    let mut sold: BTreeSet<usize> = BTreeSet::new();
    let mut log = RunLog::default();
    let mut builder = OutcomeBuilder::new(&instance);

    // Seller phase: each seller sees the marginal price at the current state
    // and either keeps (joining the conditioning set) or goes up for sale at
    // that price as their tag.
    let mut pending: BTreeSet<usize> = (0..k).collect();
    while !pending.is_empty() {
        let options: Vec<AgentId> = pending.iter().map(|&j| AgentId::seller(j)).collect();
        let scores = vec![Rat::zero(); options.len()];
        let picked = choose(adversary, ChoiceKind::SellerArrival, &options, &scores);
        let seller = options[picked].index;
        pending.remove(&seller);

        let price = match pricing.price(AgentId::seller(seller), &conditioned)? {
            Price::Finite(p) => p,
            // A seller slot is always addable before the capacity fills, and
            // at most k agents ever join the conditioning set.
            Price::Blocked => unreachable!("seller prices are finite in the seller phase"),
        };
        log.offers.push((AgentId::seller(seller), Price::Finite(price.clone())));
        if seller_values[seller] >= price {
            conditioned.insert(AgentId::seller(seller));
            log.consumed.push((AgentId::seller(seller), price));
        } else {
            tags[seller] = Some(price);
            open_sellers.insert(seller);
        }
    }

    // Buyer phase: buyers arrive in adversarial order; each is matched to an
    // open seller of the adversary's choosing.
    let mut pending: BTreeSet<usize> = (0..n).collect();
    while !pending.is_empty() && !open_sellers.is_empty() {
        let options: Vec<AgentId> = pending.iter().map(|&i| AgentId::buyer(i)).collect();
        let mut scores = Vec::with_capacity(options.len());
        for &candidate in &pending {
            // Score: the least welfare this arrival can add over the
            // adversary's seller matches.
            let mut worst: Option<Rat> = None;
            for &seller in &open_sellers {
                let step = classify(
                    pricing,
                    &conditioned,
                    tags[seller].as_ref().expect("open sellers are tagged"),
                    &buyer_values[candidate],
                    &seller_values[seller],
                    candidate,
                )?;
                let delta = step_welfare(&step, &buyer_values[candidate], &seller_values[seller]);
                if worst.as_ref().is_none_or(|w| delta < *w) {
                    worst = Some(delta);
                }
            }
            scores.push(worst.expect("open sellers nonempty"));
        }
        let picked = choose(adversary, ChoiceKind::BuyerArrival, &options, &scores);
        let buyer = options[picked].index;
        pending.remove(&buyer);

        let match_options: Vec<AgentId> =
            open_sellers.iter().map(|&j| AgentId::seller(j)).collect();
        let mut match_scores = Vec::with_capacity(match_options.len());
        for &seller in &open_sellers {
            let step = classify(
                pricing,
                &conditioned,
                tags[seller].as_ref().expect("open sellers are tagged"),
                &buyer_values[buyer],
                &seller_values[seller],
                buyer,
            )?;
            match_scores.push(step_welfare(&step, &buyer_values[buyer], &seller_values[seller]));
        }
        let picked = choose(adversary, ChoiceKind::SellerMatch, &match_options, &match_scores);
        let seller = match_options[picked].index;

        let tag = tags[seller].clone().expect("open sellers are tagged");
        let step = classify(
            pricing,
            &conditioned,
            &tag,
            &buyer_values[buyer],
            &seller_values[seller],
            buyer,
        )?;
        // The buyer's consulted price, blocked or not, goes on the record.
        log.offers.push((AgentId::buyer(buyer), pricing.price(AgentId::buyer(buyer), &conditioned)?));
        match step {
            Step::BuyerPasses => {}
            Step::TradeAtTag { price } => {
                builder.trade(instance.sole_item(seller), seller, buyer, price.clone(), tag);
                sold.insert(seller);
                open_sellers.remove(&seller);
                conditioned.insert(AgentId::buyer(buyer));
                log.consumed.push((AgentId::buyer(buyer), price));
            }
            Step::SellerKeeps { price } => {
                log.offers.push((AgentId::seller(seller), Price::Finite(price.clone())));
                open_sellers.remove(&seller);
                conditioned.insert(AgentId::buyer(buyer));
                log.consumed.push((AgentId::buyer(buyer), price));
            }
            Step::TradeAtPrice { price } => {
                log.offers.push((AgentId::seller(seller), Price::Finite(price.clone())));
                builder.trade(
                    instance.sole_item(seller),
                    seller,
                    buyer,
                    price.clone(),
                    price.clone(),
                );
                sold.insert(seller);
                open_sellers.remove(&seller);
                tags[seller] = Some(price.clone());
                conditioned.insert(AgentId::buyer(buyer));
                log.consumed.push((AgentId::buyer(buyer), price));
            }
            Step::TagDrops { price } => {
                log.offers.push((AgentId::seller(seller), Price::Finite(price.clone())));
                tags[seller] = Some(price);
            }
        }
        // Every seller either sits in the conditioning set, stays open, or
        // sold; every sale moved one buyer into the conditioning set.
        debug_assert_eq!(conditioned.len() + open_sellers.len(), k);
    }

    for seller in 0..k {
        if !sold.contains(&seller) {
            builder.keep(&instance, seller);
        }
    }
    Ok(MechanismRun { outcome: builder.build(&instance)?, log })
}

#[cfg(test)]
mod tests {
    use super::super::test_fixtures::*;
    use super::super::{
        run_matroid_sbb, run_matroid_wbb, CanonicalOrder, Mechanism, MechanismError,
    };
    use crate::engine::Engine;
    use crate::market::{welfare, AgentId, Constraint, Instance};
    use crate::matroid::Matroid;
    use crate::pricing::{Price, PricingError};
    use crate::rational::{rat, rat_int};
    use std::collections::BTreeSet;
    use std::sync::Arc;

    fn uniform_market(buyers: &[i64], sellers: &[i64], rank: usize) -> Arc<Instance> {
        Arc::new(
            Instance::unit_market(
                buyers.iter().map(|&v| det(v)).collect(),
                sellers.iter().map(|&v| det(v)).collect(),
                Constraint::Matroid(Matroid::uniform(buyers.len(), rank).unwrap()),
            )
            .unwrap(),
        )
    }

    #[test]
    fn sbb_trades_both_items_in_two_rounds() {
        // Buyers (5, 3), sellers (0, 0), uniform rank 2. The buyer thresholds
        // are 5/3 in round one (pair price (5+0)/3) and 1 in round two
        // ((3+0)/3); both buyers clear them.
        let instance = uniform_market(&[5, 3], &[0, 0], 2);
        let profile = unit_profile(&[5, 3], &[0, 0]);
        let run = run_matroid_sbb(&instance, &profile, Engine::exact_default()).unwrap();
        assert_eq!(run.outcome.ledger.len(), 2);
        assert_eq!(run.outcome.ledger[0].buyer_pays, rat(5, 3));
        assert_eq!(run.outcome.ledger[0].seller_receives, rat(5, 3));
        assert_eq!(run.outcome.ledger[1].buyer_pays, rat_int(1));
        assert_eq!(welfare(&instance, &run.outcome, &profile), rat_int(8));
    }

    #[test]
    fn sbb_seller_above_pair_price_keeps() {
        // Seller at 100 faces pair price (1 + 100)/3 and keeps; with capacity
        // gone the buyer's threshold turns blocked and the run ends.
        let instance = uniform_market(&[1], &[100], 1);
        let profile = unit_profile(&[1], &[100]);
        let run = run_matroid_sbb(&instance, &profile, Engine::exact_default()).unwrap();
        assert!(run.outcome.ledger.is_empty());
        assert_eq!(run.outcome.bundle(AgentId::seller(0)), &BTreeSet::from([0]));
        assert_eq!(welfare(&instance, &run.outcome, &profile), rat_int(100));
    }

    #[test]
    fn sbb_stochastic_prices_match_hand_computation() {
        // Buyer uniform {0, 6}, seller 0, rank 1: threshold E[marginal] = 3,
        // pair price 1. On the high draw the buyer trades at 1.
        let instance = Arc::new(
            Instance::unit_market(
                vec![coin(0, 6)],
                vec![det(0)],
                Constraint::Matroid(Matroid::uniform(1, 1).unwrap()),
            )
            .unwrap(),
        );
        let profile = unit_profile(&[6], &[0]);
        let run = run_matroid_sbb(&instance, &profile, Engine::exact_default()).unwrap();
        assert_eq!(run.outcome.ledger.len(), 1);
        assert_eq!(run.outcome.ledger[0].buyer_pays, rat_int(1));
    }

    #[test]
    fn wbb_charges_marginal_prices_and_banks_surplus() {
        // Buyers (5, 3), sellers (0, 0), rank 2. Seller tags are both 3/2;
        // buyer prices are 5/2 then 3/2. First trade banks 5/2 - 3/2 = 1.
        let instance = uniform_market(&[5, 3], &[0, 0], 2);
        let profile = unit_profile(&[5, 3], &[0, 0]);
        let run =
            run_matroid_wbb(&instance, &profile, &mut CanonicalOrder, Engine::exact_default())
                .unwrap();
        assert_eq!(run.outcome.ledger.len(), 2);
        assert_eq!(run.outcome.ledger[0].buyer_pays, rat(5, 2));
        assert_eq!(run.outcome.ledger[0].seller_receives, rat(3, 2));
        assert_eq!(run.outcome.ledger[1].buyer_pays, rat(3, 2));
        assert_eq!(run.outcome.ledger[1].seller_receives, rat(3, 2));
        assert_eq!(welfare(&instance, &run.outcome, &profile), rat_int(8));
        // Consumed prices telescope: 5/2 + 3/2 = (8 - 0) / 2.
        assert_eq!(
            run.log.consumed.iter().map(|(_, p)| p.clone()).sum::<crate::rational::Rat>(),
            rat_int(4)
        );
    }

    #[test]
    fn wbb_valuable_sellers_keep_and_join_conditioning() {
        // Buyers (5, 1), sellers (4, 4), rank 2. Seller 0's marginal price is
        // (9 - 5)/2 = 2 <= 4, so they keep; seller 1 then faces (5 - 0)/2 =
        // 5/2 <= 4 and keeps too. Buyers find no open seller.
        let instance = uniform_market(&[5, 1], &[4, 4], 2);
        let profile = unit_profile(&[5, 1], &[4, 4]);
        let run =
            run_matroid_wbb(&instance, &profile, &mut CanonicalOrder, Engine::exact_default())
                .unwrap();
        assert!(run.outcome.ledger.is_empty());
        assert_eq!(welfare(&instance, &run.outcome, &profile), rat_int(8));
        assert_eq!(run.log.consumed.len(), 2);
        assert_eq!(run.log.consumed[0].1, rat_int(2));
        assert_eq!(run.log.consumed[1].1, rat(5, 2));
    }

    #[test]
    fn wbb_blocked_buyer_passes_while_sellers_stay_open() {
        // Buyers 0 and 1 share a capacity-one partition block, buyer 2 has
        // their own. After buyer 0 trades, buyer 1 is blocked but seller 1 is
        // still open; buyer 2 then takes it.
        let matroid = Matroid::partition(vec![vec![0, 1], vec![2]], vec![1, 1]).unwrap();
        let instance = Arc::new(
            Instance::unit_market(
                vec![det(5), det(3), det(2)],
                vec![det(0), det(0)],
                Constraint::Matroid(matroid),
            )
            .unwrap(),
        );
        let profile = unit_profile(&[5, 3, 2], &[0, 0]);
        let run =
            run_matroid_wbb(&instance, &profile, &mut CanonicalOrder, Engine::exact_default())
                .unwrap();
        assert_eq!(run.outcome.ledger.len(), 2);
        assert_eq!(run.outcome.ledger[0].buyer, AgentId::buyer(0));
        assert_eq!(run.outcome.ledger[0].buyer_pays, rat(5, 2));
        assert_eq!(run.outcome.ledger[1].buyer, AgentId::buyer(2));
        assert_eq!(run.outcome.ledger[1].buyer_pays, rat_int(1));
        let blocked: Vec<_> = run.log.offers_to(AgentId::buyer(1)).collect();
        assert_eq!(blocked, vec![&Price::Blocked]);
        assert_eq!(welfare(&instance, &run.outcome, &profile), rat_int(7));
    }

    #[test]
    fn wbb_rejects_non_matroid_instances() {
        let instance = Arc::new(
            Instance::unit_market(vec![det(1)], vec![det(0)], Constraint::Unconstrained).unwrap(),
        );
        let err = Mechanism::MatroidWbb
            .prepare(&instance, Engine::exact_default())
            .unwrap_err();
        assert!(matches!(err, MechanismError::Pricing(PricingError::NotMatroid)));
    }
}
