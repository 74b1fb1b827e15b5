//! Exact welfare oracles: optimal (possibly conditioned) allocations for the
//! matroid, knapsack, and combinatorial settings, plus the per-item surplus
//! decomposition used to price heterogeneous items.
//!
//! Every oracle here is exact. The branch-and-bound knapsack search has a
//! brute-force twin ([`naive_knapsack`]) kept deliberately independent so the
//! two can certify each other.

use crate::market::{AgentId, Instance, ItemId, Profile, Role, Valuation};
use crate::matroid::{extended_max_weight_basis, max_weight_basis, ExtendedMatroid, Matroid, MatroidView};
use crate::rational::Rat;
use num::{One, Zero};
use std::collections::{BTreeMap, BTreeSet};

/// Hard size limits for the exact searches. Inputs above these are refused
/// with an explicit error rather than silently approximated.
pub const MAX_KNAPSACK_BUYERS: usize = 22;
pub const MAX_XOS_ITEMS: usize = 8;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("knapsack search supports at most {MAX_KNAPSACK_BUYERS} buyers, got {0}")]
    TooManyBuyers(usize),
    #[error("exact XOS allocation search supports at most {MAX_XOS_ITEMS} items, got {0}")]
    TooManyItems(usize),
    #[error("oracle requires scalar values for every agent")]
    NotUnitMarket,
}

// ---------------------------------------------------------------------------
// Matroid markets
// ---------------------------------------------------------------------------

/// Best feasible set of *additional* buyers (and its value) given that the
/// buyers in `contracted` already hold items and only `rank_cap` items may
/// end up on the buyer side in total.
pub fn opt_buyers(
    values: &[Rat],
    matroid: &Matroid,
    contracted: &BTreeSet<usize>,
    rank_cap: usize,
) -> (BTreeSet<usize>, Rat) {
    max_weight_basis(&MatroidView::new(matroid, contracted.clone(), rank_cap), values)
}

/// Best feasible set of additional agents — buyers or sellers — after the
/// agents in `contracted` have been irrevocably served, over the extended
/// matroid of a market with `seller_values.len()` identical items.
pub fn opt_all_agents(
    buyer_values: &[Rat],
    seller_values: &[Rat],
    matroid: &Matroid,
    contracted: &BTreeSet<AgentId>,
) -> (BTreeSet<AgentId>, Rat) {
    let ext = ExtendedMatroid::new(matroid, seller_values.len());
    extended_max_weight_basis(&ext, contracted, buyer_values, seller_values)
}

// ---------------------------------------------------------------------------
// Knapsack markets
// ---------------------------------------------------------------------------

/// Exact optimum of a knapsack market with `seller_values.len()` identical
/// items: choose served buyers `B'` with total weight at most 1 and
/// `|B'| <= k`; the `k - |B'|` unsold items stay with the highest-value
/// sellers. Returns one optimal buyer set and the optimal welfare.
pub fn opt_knapsack(
    buyer_values: &[Rat],
    weights: &[Rat],
    seller_values: &[Rat],
) -> Result<(BTreeSet<usize>, Rat), OracleError> {
    let n = buyer_values.len();
    assert_eq!(weights.len(), n);
    if n > MAX_KNAPSACK_BUYERS {
        return Err(OracleError::TooManyBuyers(n));
    }
    let k = seller_values.len();
    let keep_value = seller_keep_prefix(seller_values);
    // Suffix sums of buyer values for the optimistic bound.
    let mut suffix = vec![Rat::zero(); n + 1];
    for i in (0..n).rev() {
        suffix[i] = &suffix[i + 1] + &buyer_values[i];
    }

    struct Search<'a> {
        values: &'a [Rat],
        weights: &'a [Rat],
        suffix: &'a [Rat],
        keep_value: &'a [Rat],
        k: usize,
        best: Rat,
        best_set: BTreeSet<usize>,
        chosen: Vec<usize>,
    }
    impl Search<'_> {
        fn go(&mut self, i: usize, used_weight: Rat, value: Rat) {
            let count = self.chosen.len();
            let candidate = &value + &self.keep_value[self.k - count];
            if candidate > self.best {
                self.best = candidate;
                self.best_set = self.chosen.iter().copied().collect();
            }
            if i == self.values.len() {
                return;
            }
            // Optimistic bound: take every remaining buyer and still keep as
            // many items as we currently could.
            if &value + &self.suffix[i] + &self.keep_value[self.k - count] <= self.best {
                return;
            }
            if count < self.k {
                let with = &used_weight + &self.weights[i];
                if with <= Rat::one() {
                    self.chosen.push(i);
                    self.go(i + 1, with, &value + &self.values[i]);
                    self.chosen.pop();
                }
            }
            self.go(i + 1, used_weight, value);
        }
    }

    let mut search = Search {
        values: buyer_values,
        weights,
        suffix: &suffix,
        keep_value: &keep_value,
        k,
        best: keep_value[k].clone(),
        best_set: BTreeSet::new(),
        chosen: Vec::new(),
    };
    search.go(0, Rat::zero(), Rat::zero());
    Ok((search.best_set, search.best))
}

/// `keep_value[t]` = total value of the `t` highest-value sellers.
fn seller_keep_prefix(seller_values: &[Rat]) -> Vec<Rat> {
    let mut sorted = seller_values.to_vec();
    sorted.sort_by(|a, b| b.cmp(a));
    let mut prefix = vec![Rat::zero()];
    for v in &sorted {
        prefix.push(prefix.last().unwrap() + v);
    }
    prefix
}

/// Brute-force reference for [`opt_knapsack`]: enumerates every buyer subset.
pub fn naive_knapsack(
    buyer_values: &[Rat],
    weights: &[Rat],
    seller_values: &[Rat],
) -> Rat {
    let n = buyer_values.len();
    assert!(n <= 20, "naive oracle is for small instances");
    let k = seller_values.len();
    let keep_value = seller_keep_prefix(seller_values);
    let mut best = Rat::zero();
    for mask in 0u64..(1u64 << n) {
        let members: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        if members.len() > k {
            continue;
        }
        let weight: Rat = members.iter().map(|&i| weights[i].clone()).sum();
        if weight > Rat::one() {
            continue;
        }
        let value: Rat = members.iter().map(|&i| buyer_values[i].clone()).sum();
        let total = value + &keep_value[k - members.len()];
        if total > best {
            best = total;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Combinatorial markets
// ---------------------------------------------------------------------------

/// An optimal allocation of every item together with its welfare.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CombinatorialOpt {
    pub allocation: BTreeMap<AgentId, BTreeSet<ItemId>>,
    pub welfare: Rat,
}

/// Exact welfare-maximizing allocation for a heterogeneous-item market:
/// every item goes to its owning seller or to some buyer, and a seller only
/// derives value from their own items.
///
/// Additive profiles use the per-item argmax (ties keep the item with its
/// owner, then go to the lowest buyer). General XOS profiles are solved by
/// exhaustive assignment search (at most [`MAX_XOS_ITEMS`] items), scanning
/// assignments owner-first so that on welfare ties every item that can stay
/// home does.
pub fn opt_combinatorial(
    instance: &Instance,
    profile: &Profile,
) -> Result<CombinatorialOpt, OracleError> {
    let all_additive = profile
        .buyers
        .iter()
        .chain(profile.sellers.iter())
        .all(|v| match v {
            Valuation::Unit(_) => false,
            Valuation::Xos(x) => x.is_additive(),
        });
    if all_additive {
        return Ok(opt_additive(instance, profile));
    }
    let m = instance.n_items();
    if m > MAX_XOS_ITEMS {
        return Err(OracleError::TooManyItems(m));
    }
    let n = instance.n_buyers();
    let owner_of: Vec<usize> = owner_table(instance);

    let mut best: Option<CombinatorialOpt> = None;
    // assignment digit: 0 = owner keeps, t >= 1 = buyer t-1.
    let mut digits = vec![0usize; m];
    loop {
        let allocation = assignment_to_allocation(instance, &owner_of, &digits);
        let welfare = allocation_welfare(instance, profile, &allocation);
        if best.as_ref().is_none_or(|b| welfare > b.welfare) {
            best = Some(CombinatorialOpt { allocation, welfare });
        }
        // Odometer increment, least-significant item first.
        let mut pos = 0;
        loop {
            if pos == m {
                return Ok(best.expect("at least one assignment"));
            }
            digits[pos] += 1;
            if digits[pos] <= n {
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
    }
}

fn owner_table(instance: &Instance) -> Vec<usize> {
    let mut owner = vec![0usize; instance.n_items()];
    for l in 0..instance.n_sellers() {
        for &item in instance.endowment(l) {
            owner[item] = l;
        }
    }
    owner
}

fn assignment_to_allocation(
    instance: &Instance,
    owner_of: &[usize],
    digits: &[usize],
) -> BTreeMap<AgentId, BTreeSet<ItemId>> {
    let mut allocation: BTreeMap<AgentId, BTreeSet<ItemId>> =
        instance.agents().map(|a| (a, BTreeSet::new())).collect();
    for (item, &digit) in digits.iter().enumerate() {
        let agent = if digit == 0 {
            AgentId::seller(owner_of[item])
        } else {
            AgentId::buyer(digit - 1)
        };
        allocation.get_mut(&agent).expect("known agent").insert(item);
    }
    allocation
}

fn allocation_welfare(
    instance: &Instance,
    profile: &Profile,
    allocation: &BTreeMap<AgentId, BTreeSet<ItemId>>,
) -> Rat {
    allocation
        .iter()
        .map(|(&agent, bundle)| {
            instance.evaluate(agent, bundle, profile).expect("bundle within instance")
        })
        .sum()
}

/// Per-item argmax for additive profiles.
fn opt_additive(instance: &Instance, profile: &Profile) -> CombinatorialOpt {
    let owner_of = owner_table(instance);
    let singleton_value = |valuation: &Valuation, item: ItemId| -> Rat {
        match valuation {
            Valuation::Unit(_) => unreachable!("additive path"),
            Valuation::Xos(x) => {
                x.clauses()[0].get(&item).cloned().unwrap_or_else(Rat::zero)
            }
        }
    };
    let mut allocation: BTreeMap<AgentId, BTreeSet<ItemId>> =
        instance.agents().map(|a| (a, BTreeSet::new())).collect();
    let mut welfare = Rat::zero();
    for item in 0..instance.n_items() {
        let owner = owner_of[item];
        let mut winner = AgentId::seller(owner);
        let mut best = singleton_value(&profile.sellers[owner], item);
        for b in 0..instance.n_buyers() {
            let v = singleton_value(&profile.buyers[b], item);
            if v > best {
                best = v;
                winner = AgentId::buyer(b);
            }
        }
        allocation.get_mut(&winner).expect("known agent").insert(item);
        welfare += best;
    }
    CombinatorialOpt { allocation, welfare }
}

/// Splits each agent's realized value across the items they receive: agent
/// `i` with bundle `Y` contributes, for each `j ∈ Y`, the weight of `j` in
/// the first clause attaining `v_i(Y)`. Unit valuations put their full value
/// on the smallest item of the bundle. The contributions of one bundle sum
/// exactly to the bundle's value, and every such clause never overestimates
/// any sub-bundle.
pub fn sw_contribution(
    instance: &Instance,
    profile: &Profile,
    allocation: &BTreeMap<AgentId, BTreeSet<ItemId>>,
) -> Vec<Rat> {
    let mut contribution = vec![Rat::zero(); instance.n_items()];
    for (&agent, bundle) in allocation {
        if bundle.is_empty() {
            continue;
        }
        // Sellers only derive value from their own items.
        let effective: BTreeSet<ItemId> = match agent.role {
            Role::Buyer => bundle.clone(),
            Role::Seller => {
                bundle.intersection(instance.endowment(agent.index)).copied().collect()
            }
        };
        if effective.is_empty() {
            continue;
        }
        match profile.get(agent) {
            Valuation::Unit(v) => {
                let first = *effective.iter().next().expect("nonempty");
                contribution[first] += v;
            }
            Valuation::Xos(x) => {
                let (clause_idx, _) = x.supporting_clause(&effective);
                let clause = &x.clauses()[clause_idx];
                for &item in &effective {
                    if let Some(w) = clause.get(&item) {
                        contribution[item] += w;
                    }
                }
            }
        }
    }
    contribution
}
