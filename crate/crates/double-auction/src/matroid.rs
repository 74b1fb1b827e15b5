//! Matroids over buyer indices, contraction/truncation views, greedy
//! optimization, and the extended two-sided matroid that couples buyers with
//! the pool of identical items.
//!
//! Greedy is exact on matroids, so [`max_weight_basis`] is the production
//! optimizer; [`exhaustive_max_weight`] is the independent reference oracle
//! the test suites compare it against.

use crate::market::AgentId;
use crate::rational::Rat;
use num::Zero;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MatroidError {
    #[error("uniform rank {rank} exceeds ground size {ground}")]
    RankTooLarge { rank: usize, ground: usize },
    #[error("partition blocks do not partition the ground set: element {0} appears {1} times")]
    BlocksNotPartition(usize, usize),
    #[error("partition has {blocks} blocks but {capacities} capacities")]
    CapacityCount { blocks: usize, capacities: usize },
    #[error("independence family does not contain the empty set")]
    MissingEmptySet,
    #[error("independence family references element {0} outside the ground set")]
    ElementOutOfRange(usize),
    #[error("independence family is not downward closed at {0:?}")]
    NotDownwardClosed(Vec<usize>),
    #[error("exchange property fails for {smaller:?} and {larger:?}")]
    ExchangeFails { smaller: Vec<usize>, larger: Vec<usize> },
    #[error("ground set of {0} elements is too large to enumerate")]
    GroundTooLarge(usize),
}

/// A matroid on ground set `{0, .., n-1}` (buyer indices).
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Matroid {
    /// Independent iff at most `rank` elements.
    Uniform { ground: usize, rank: usize },
    /// Independent iff each block contributes at most its capacity.
    Partition { blocks: Vec<Vec<usize>>, capacities: Vec<usize> },
    /// Element `i` is edge `edges[i]`; independent iff the edge set is a forest.
    Graphic { edges: Vec<(usize, usize)> },
    /// Independence family given extensionally (validated at construction).
    Explicit { ground: usize, independent: BTreeSet<BTreeSet<usize>> },
}

impl Matroid {
    pub fn uniform(ground: usize, rank: usize) -> Result<Self, MatroidError> {
        if rank > ground {
            return Err(MatroidError::RankTooLarge { rank, ground });
        }
        Ok(Matroid::Uniform { ground, rank })
    }

    /// Free matroid: everything independent.
    pub fn free(ground: usize) -> Self {
        Matroid::Uniform { ground, rank: ground }
    }

    pub fn partition(
        blocks: Vec<Vec<usize>>,
        capacities: Vec<usize>,
    ) -> Result<Self, MatroidError> {
        if blocks.len() != capacities.len() {
            return Err(MatroidError::CapacityCount {
                blocks: blocks.len(),
                capacities: capacities.len(),
            });
        }
        let ground: usize = blocks.iter().map(|b| b.len()).sum();
        let mut seen = vec![0usize; ground];
        for block in &blocks {
            for &e in block {
                if e >= ground {
                    return Err(MatroidError::BlocksNotPartition(e, 0));
                }
                seen[e] += 1;
            }
        }
        for (e, &count) in seen.iter().enumerate() {
            if count != 1 {
                return Err(MatroidError::BlocksNotPartition(e, count));
            }
        }
        Ok(Matroid::Partition { blocks, capacities })
    }

    pub fn graphic(edges: Vec<(usize, usize)>) -> Self {
        Matroid::Graphic { edges }
    }

    /// Validates the three independence axioms exhaustively; intended for
    /// small ground sets.
    pub fn explicit(
        ground: usize,
        independent: BTreeSet<BTreeSet<usize>>,
    ) -> Result<Self, MatroidError> {
        if !independent.contains(&BTreeSet::new()) {
            return Err(MatroidError::MissingEmptySet);
        }
        for set in &independent {
            for &e in set {
                if e >= ground {
                    return Err(MatroidError::ElementOutOfRange(e));
                }
            }
            for &e in set {
                let mut smaller = set.clone();
                smaller.remove(&e);
                if !independent.contains(&smaller) {
                    return Err(MatroidError::NotDownwardClosed(set.iter().copied().collect()));
                }
            }
        }
        for x in &independent {
            for y in &independent {
                if x.len() < y.len()
                    && !y.iter().any(|&e| {
                        if x.contains(&e) {
                            return false;
                        }
                        let mut grown = x.clone();
                        grown.insert(e);
                        independent.contains(&grown)
                    })
                {
                    return Err(MatroidError::ExchangeFails {
                        smaller: x.iter().copied().collect(),
                        larger: y.iter().copied().collect(),
                    });
                }
            }
        }
        Ok(Matroid::Explicit { ground, independent })
    }

    /// Re-encodes any matroid extensionally without re-validating axioms
    /// (the source variant already guarantees them). Ground sets above 20
    /// elements are refused.
    pub fn to_explicit(&self) -> Result<Self, MatroidError> {
        let n = self.ground_size();
        if n > 20 {
            return Err(MatroidError::GroundTooLarge(n));
        }
        let mut independent = BTreeSet::new();
        for mask in 0u64..(1u64 << n) {
            let set: BTreeSet<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
            if self.is_independent(&set) {
                independent.insert(set);
            }
        }
        Ok(Matroid::Explicit { ground: n, independent })
    }

    pub fn ground_size(&self) -> usize {
        match self {
            Matroid::Uniform { ground, .. } => *ground,
            Matroid::Partition { blocks, .. } => blocks.iter().map(|b| b.len()).sum(),
            Matroid::Graphic { edges } => edges.len(),
            Matroid::Explicit { ground, .. } => *ground,
        }
    }

    pub fn is_independent(&self, set: &BTreeSet<usize>) -> bool {
        debug_assert!(set.iter().all(|&e| e < self.ground_size()));
        match self {
            Matroid::Uniform { rank, .. } => set.len() <= *rank,
            Matroid::Partition { blocks, capacities } => {
                blocks.iter().zip(capacities).all(|(block, &cap)| {
                    block.iter().filter(|e| set.contains(e)).count() <= cap
                })
            }
            Matroid::Graphic { edges } => forest_check(edges, set),
            Matroid::Explicit { independent, .. } => independent.contains(set),
        }
    }
}

/// Union-find acyclicity test for the selected edge subset.
fn forest_check(edges: &[(usize, usize)], set: &BTreeSet<usize>) -> bool {
    let mut parent: BTreeMap<usize, usize> = BTreeMap::new();
    fn find(parent: &mut BTreeMap<usize, usize>, v: usize) -> usize {
        let p = *parent.entry(v).or_insert(v);
        if p == v {
            v
        } else {
            let root = find(parent, p);
            parent.insert(v, root);
            root
        }
    }
    for &e in set {
        let (u, v) = edges[e];
        let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
        if ru == rv {
            return false; // closes a cycle (self-loops included)
        }
        parent.insert(ru, rv);
    }
    true
}

// ---------------------------------------------------------------------------
// Views: contraction by an already-served set, truncation by a rank cap
// ---------------------------------------------------------------------------

/// The matroid restricted to additions: `T` is feasible iff it avoids the
/// contracted set `X`, `X ∪ T` is independent, and `|X ∪ T|` stays within
/// the rank cap (the number of items still in play).
#[derive(Clone, Debug)]
pub struct MatroidView<'a> {
    matroid: &'a Matroid,
    contracted: BTreeSet<usize>,
    rank_cap: usize,
}

impl<'a> MatroidView<'a> {
    pub fn new(matroid: &'a Matroid, contracted: BTreeSet<usize>, rank_cap: usize) -> Self {
        debug_assert!(matroid.is_independent(&contracted));
        MatroidView { matroid, contracted, rank_cap }
    }

    pub fn contracted(&self) -> &BTreeSet<usize> {
        &self.contracted
    }

    pub fn rank_cap(&self) -> usize {
        self.rank_cap
    }

    pub fn ground_size(&self) -> usize {
        self.matroid.ground_size()
    }

    /// Is `T` a feasible set of additions?
    pub fn is_addition(&self, additions: &BTreeSet<usize>) -> bool {
        if additions.iter().any(|e| self.contracted.contains(e)) {
            return false;
        }
        if self.contracted.len() + additions.len() > self.rank_cap {
            return false;
        }
        let mut union = self.contracted.clone();
        union.extend(additions.iter().copied());
        self.matroid.is_independent(&union)
    }
}

/// Greedy maximum-weight feasible addition set: candidates in decreasing
/// weight (ties by index) are kept when they preserve feasibility. Exact on
/// matroids. Returns the chosen set and the total weight of the additions.
pub fn max_weight_basis(view: &MatroidView, weights: &[Rat]) -> (BTreeSet<usize>, Rat) {
    debug_assert_eq!(weights.len(), view.ground_size());
    let mut order: Vec<usize> =
        (0..view.ground_size()).filter(|e| !view.contracted().contains(e)).collect();
    order.sort_by(|&a, &b| weights[b].cmp(&weights[a]).then(a.cmp(&b)));
    let mut chosen: BTreeSet<usize> = BTreeSet::new();
    let mut union = view.contracted().clone();
    let mut total = Rat::zero();
    for e in order {
        if union.len() >= view.rank_cap() {
            break;
        }
        union.insert(e);
        if view.matroid.is_independent(&union) {
            chosen.insert(e);
            total += &weights[e];
        } else {
            union.remove(&e);
        }
    }
    (chosen, total)
}

/// Reference oracle: maximum addition weight by enumerating every subset.
/// Only for small ground sets; used to certify the greedy implementation.
pub fn exhaustive_max_weight(view: &MatroidView, weights: &[Rat]) -> Rat {
    let n = view.ground_size();
    assert!(n <= 20, "exhaustive oracle is for small ground sets");
    let mut best = Rat::zero();
    for mask in 0u64..(1u64 << n) {
        let set: BTreeSet<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        if view.is_addition(&set) {
            let total: Rat = set.iter().map(|&e| weights[e].clone()).sum();
            if total > best {
                best = total;
            }
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Extended two-sided matroid
// ---------------------------------------------------------------------------

/// The joint structure for a market with `n_sellers` identical items: a set
/// of agents is independent iff its buyers are independent in the buyer
/// matroid and the total size does not exceed the number of items.
/// Contracting a seller (who keeps an item) therefore shrinks the capacity
/// left for everyone else.
#[derive(Clone, Debug)]
pub struct ExtendedMatroid<'a> {
    buyer_matroid: &'a Matroid,
    n_sellers: usize,
}

impl<'a> ExtendedMatroid<'a> {
    pub fn new(buyer_matroid: &'a Matroid, n_sellers: usize) -> Self {
        ExtendedMatroid { buyer_matroid, n_sellers }
    }

    pub fn n_sellers(&self) -> usize {
        self.n_sellers
    }

    pub fn is_independent(&self, set: &BTreeSet<AgentId>) -> bool {
        if set.len() > self.n_sellers {
            return false;
        }
        let buyers: BTreeSet<usize> = set
            .iter()
            .filter(|a| a.role == crate::market::Role::Buyer)
            .map(|a| a.index)
            .collect();
        self.buyer_matroid.is_independent(&buyers)
    }

    /// Can `agent` be added to the independent set `base`?
    pub fn can_add(&self, base: &BTreeSet<AgentId>, agent: AgentId) -> bool {
        if base.contains(&agent) {
            return false;
        }
        let mut grown = base.clone();
        grown.insert(agent);
        self.is_independent(&grown)
    }
}

/// Greedy maximum-weight addition over the extended matroid contracted by
/// `contracted`. Candidates are every agent outside `contracted`, scanned in
/// decreasing weight with ties by canonical agent order (buyers first).
/// Returns the chosen agents and their total weight.
pub fn extended_max_weight_basis(
    ext: &ExtendedMatroid,
    contracted: &BTreeSet<AgentId>,
    buyer_weights: &[Rat],
    seller_weights: &[Rat],
) -> (BTreeSet<AgentId>, Rat) {
    debug_assert!(ext.is_independent(contracted));
    let weight = |a: &AgentId| -> &Rat {
        match a.role {
            crate::market::Role::Buyer => &buyer_weights[a.index],
            crate::market::Role::Seller => &seller_weights[a.index],
        }
    };
    let mut order: Vec<AgentId> = (0..buyer_weights.len())
        .map(AgentId::buyer)
        .chain((0..seller_weights.len()).map(AgentId::seller))
        .filter(|a| !contracted.contains(a))
        .collect();
    order.sort_by(|a, b| weight(b).cmp(weight(a)).then(a.cmp(b)));
    let mut union = contracted.clone();
    let mut chosen = BTreeSet::new();
    let mut total = Rat::zero();
    for agent in order {
        if union.len() >= ext.n_sellers() {
            break;
        }
        union.insert(agent);
        if ext.is_independent(&union) {
            chosen.insert(agent);
            total += weight(&agent);
        } else {
            union.remove(&agent);
        }
    }
    (chosen, total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat, rat_int};

    fn set(elems: &[usize]) -> BTreeSet<usize> {
        elems.iter().copied().collect()
    }

    #[test]
    fn uniform_independence() {
        let m = Matroid::uniform(4, 2).unwrap();
        assert!(m.is_independent(&set(&[])));
        assert!(m.is_independent(&set(&[1, 3])));
        assert!(!m.is_independent(&set(&[0, 1, 2])));
        assert!(Matroid::uniform(2, 3).is_err());
    }

    #[test]
    fn partition_independence() {
        let m = Matroid::partition(vec![vec![0, 1], vec![2]], vec![1, 1]).unwrap();
        assert!(m.is_independent(&set(&[0, 2])));
        assert!(!m.is_independent(&set(&[0, 1])));
        assert!(Matroid::partition(vec![vec![0, 0]], vec![1]).is_err());
        assert!(Matroid::partition(vec![vec![0]], vec![1, 2]).is_err());
    }

    #[test]
    fn graphic_independence_is_acyclicity() {
        // Triangle on vertices {0,1,2}: any two edges independent, all three not.
        let m = Matroid::graphic(vec![(0, 1), (1, 2), (0, 2)]);
        assert!(m.is_independent(&set(&[0, 1])));
        assert!(!m.is_independent(&set(&[0, 1, 2])));
        // Self-loop is dependent on its own.
        let loops = Matroid::graphic(vec![(0, 0)]);
        assert!(!loops.is_independent(&set(&[0])));
    }

    #[test]
    fn explicit_validates_axioms() {
        // {∅, {0}, {1}, {0,1}} is the free matroid on two elements.
        let free2: BTreeSet<BTreeSet<usize>> =
            [set(&[]), set(&[0]), set(&[1]), set(&[0, 1])].into_iter().collect();
        assert!(Matroid::explicit(2, free2).is_ok());

        let missing_empty: BTreeSet<BTreeSet<usize>> = [set(&[0])].into_iter().collect();
        assert_eq!(Matroid::explicit(1, missing_empty).unwrap_err(), MatroidError::MissingEmptySet);

        let not_closed: BTreeSet<BTreeSet<usize>> =
            [set(&[]), set(&[0, 1])].into_iter().collect();
        assert!(matches!(
            Matroid::explicit(2, not_closed).unwrap_err(),
            MatroidError::NotDownwardClosed(_)
        ));

        // {∅, {0}, {1}} fails exchange against... it does not: |{0}| == |{1}|.
        // A genuine exchange failure: {∅, {0}, {1}, {2}, {0,1}} with {2} and {0,1}.
        let no_exchange: BTreeSet<BTreeSet<usize>> =
            [set(&[]), set(&[0]), set(&[1]), set(&[2]), set(&[0, 1])].into_iter().collect();
        assert!(matches!(
            Matroid::explicit(3, no_exchange).unwrap_err(),
            MatroidError::ExchangeFails { .. }
        ));
    }

    #[test]
    fn to_explicit_round_trips_independence() {
        let m = Matroid::partition(vec![vec![0, 1], vec![2, 3]], vec![1, 2]).unwrap();
        let e = m.to_explicit().unwrap();
        for mask in 0u32..16 {
            let s: BTreeSet<usize> = (0..4).filter(|i| mask >> i & 1 == 1).collect();
            assert_eq!(m.is_independent(&s), e.is_independent(&s));
        }
    }

    #[test]
    fn view_applies_contraction_and_cap() {
        let m = Matroid::uniform(3, 3).unwrap();
        let view = MatroidView::new(&m, set(&[0]), 2);
        assert!(view.is_addition(&set(&[1])));
        assert!(!view.is_addition(&set(&[0])), "contracted elements cannot be re-added");
        assert!(!view.is_addition(&set(&[1, 2])), "cap counts the contracted set");
    }

    #[test]
    fn greedy_matches_hand_examples() {
        // Buyers weighted 5, 3, 2 under a rank-2 cap: greedy takes 5 and 3.
        let m = Matroid::uniform(3, 3).unwrap();
        let weights = vec![rat_int(5), rat_int(3), rat_int(2)];
        let (basis, total) = max_weight_basis(&MatroidView::new(&m, set(&[]), 2), &weights);
        assert_eq!(basis, set(&[0, 1]));
        assert_eq!(total, rat_int(8));

        // Contracting buyer 1 leaves room for one more: the 5.
        let (basis, total) = max_weight_basis(&MatroidView::new(&m, set(&[1]), 2), &weights);
        assert_eq!(basis, set(&[0]));
        assert_eq!(total, rat_int(5));

        // Rank cap 1 from scratch: just the 5.
        let (_, total) = max_weight_basis(&MatroidView::new(&m, set(&[]), 1), &weights);
        assert_eq!(total, rat_int(5));
    }

    #[test]
    fn greedy_ties_break_toward_lower_index() {
        let m = Matroid::uniform(3, 3).unwrap();
        let weights = vec![rat_int(3), rat_int(3), rat_int(3)];
        let (basis, _) = max_weight_basis(&MatroidView::new(&m, set(&[]), 1), &weights);
        assert_eq!(basis, set(&[0]));
    }

    #[test]
    fn greedy_equals_exhaustive_on_random_explicit_matroids() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for trial in 0..40 {
            let n = rng.gen_range(1..=7);
            let source = match trial % 3 {
                0 => Matroid::uniform(n, rng.gen_range(0..=n)).unwrap(),
                1 => {
                    let mut blocks: Vec<Vec<usize>> = Vec::new();
                    let mut next = 0;
                    while next < n {
                        let len = rng.gen_range(1..=(n - next));
                        blocks.push((next..next + len).collect());
                        next += len;
                    }
                    let caps = blocks.iter().map(|b| rng.gen_range(0..=b.len())).collect();
                    Matroid::partition(blocks, caps).unwrap()
                }
                _ => {
                    let verts = rng.gen_range(2..=4);
                    Matroid::graphic(
                        (0..n)
                            .map(|_| (rng.gen_range(0..verts), rng.gen_range(0..verts)))
                            .collect(),
                    )
                }
            };
            let m = source.to_explicit().unwrap();
            let weights: Vec<Rat> =
                (0..n).map(|_| rat(rng.gen_range(0..20), rng.gen_range(1..4))).collect();
            let contracted: BTreeSet<usize> = BTreeSet::new();
            for cap in 0..=n {
                let view = MatroidView::new(&m, contracted.clone(), cap);
                let (_, greedy) = max_weight_basis(&view, &weights);
                assert_eq!(greedy, exhaustive_max_weight(&view, &weights), "trial {trial} cap {cap}");
            }
        }
    }

    #[test]
    fn extended_matroid_couples_buyers_and_item_count() {
        let m = Matroid::uniform(2, 2).unwrap();
        let ext = ExtendedMatroid::new(&m, 1);
        // One item overall: one seller weighted 10 beats buyers 5 and 3.
        let (basis, total) = extended_max_weight_basis(
            &ext,
            &BTreeSet::new(),
            &[rat_int(5), rat_int(3)],
            &[rat_int(10)],
        );
        assert_eq!(total, rat_int(10));
        assert_eq!(basis, BTreeSet::from([AgentId::seller(0)]));

        // Two items: both buyers win.
        let ext2 = ExtendedMatroid::new(&m, 2);
        let (basis, total) = extended_max_weight_basis(
            &ext2,
            &BTreeSet::new(),
            &[rat_int(5), rat_int(3)],
            &[rat_int(0), rat_int(0)],
        );
        assert_eq!(total, rat_int(8));
        assert_eq!(basis, BTreeSet::from([AgentId::buyer(0), AgentId::buyer(1)]));

        // Contracting a seller eats one unit of capacity.
        let contracted = BTreeSet::from([AgentId::seller(0)]);
        let (_, total) = extended_max_weight_basis(
            &ext2,
            &contracted,
            &[rat_int(5), rat_int(3)],
            &[rat_int(0), rat_int(0)],
        );
        assert_eq!(total, rat_int(5));
    }

    #[test]
    fn zero_weights_still_fill_a_basis() {
        let m = Matroid::uniform(2, 2).unwrap();
        let ext = ExtendedMatroid::new(&m, 2);
        let (basis, total) = extended_max_weight_basis(
            &ext,
            &BTreeSet::new(),
            &[rat_int(0), rat_int(0)],
            &[rat_int(0), rat_int(0)],
        );
        assert_eq!(total, rat_int(0));
        assert_eq!(basis.len(), 2, "greedy still saturates the capacity");
    }
}
