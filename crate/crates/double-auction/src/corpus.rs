//! Built-in instance families.
//!
//! These corpora drive the acceptance suite and the benchmarks, and double
//! as worked examples of every market class the crate supports. All
//! construction is deterministic: hand-built entries plus seeded
//! pseudo-random fill, so two builds always verify the same markets.
//!
//! Sizes are chosen so that exact expectation, exhaustive order
//! enumeration, and the structural price checks all stay within interactive
//! budgets: value-profile supports multiply out to at most a few dozen
//! realizations, and instances pushing one dimension (five buyers, or four
//! sellers) stay small in the others.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::market::{Constraint, Distribution, Instance, ItemId, Valuation, XosValuation};
use crate::matroid::Matroid;
use crate::rational::{rat, rat_int, Rat};

/// A named instance from one of the built-in families.
#[derive(Clone, Debug)]
pub struct CorpusEntry {
    pub name: String,
    pub instance: Arc<Instance>,
}

fn entry(name: impl Into<String>, instance: Instance) -> CorpusEntry {
    CorpusEntry { name: name.into(), instance: Arc::new(instance) }
}

fn det(v: i64) -> Distribution {
    Distribution::point(rat_int(v))
}

fn coin(a: i64, b: i64) -> Distribution {
    Distribution::scalar(vec![(rat_int(a), rat(1, 2)), (rat_int(b), rat(1, 2))]).expect("valid")
}

/// Three-point support with probabilities 1/2, 1/4, 1/4.
fn three(a: i64, b: i64, c: i64) -> Distribution {
    Distribution::scalar(vec![
        (rat_int(a), rat(1, 2)),
        (rat_int(b), rat(1, 4)),
        (rat_int(c), rat(1, 4)),
    ])
    .expect("valid")
}

fn additive(weights: &[i64]) -> Valuation {
    let clause: BTreeMap<ItemId, Rat> =
        weights.iter().enumerate().map(|(item, &w)| (item, rat_int(w))).collect();
    Valuation::Xos(XosValuation::new(vec![clause]).expect("valid"))
}

fn xos(clauses: &[&[i64]]) -> Valuation {
    let clauses: Vec<BTreeMap<ItemId, Rat>> = clauses
        .iter()
        .map(|weights| weights.iter().enumerate().map(|(item, &w)| (item, rat_int(w))).collect())
        .collect();
    Valuation::Xos(XosValuation::new(clauses).expect("valid"))
}

fn sure(valuation: Valuation) -> Distribution {
    Distribution::new(vec![(valuation, rat_int(1))]).expect("valid")
}

fn either(a: Valuation, b: Valuation) -> Distribution {
    Distribution::new(vec![(a, rat(1, 2)), (b, rat(1, 2))]).expect("valid")
}

/// A seller valuing only their own item: the set-function form scalar
/// owners take in combinatorial markets.
fn owner(item: ItemId, v: i64) -> Valuation {
    Valuation::Xos(XosValuation::new(vec![BTreeMap::from([(item, rat_int(v))])]).expect("valid"))
}

fn owner_sure(item: ItemId, v: i64) -> Distribution {
    sure(owner(item, v))
}

fn owner_coin(item: ItemId, a: i64, b: i64) -> Distribution {
    either(owner(item, a), owner(item, b))
}

fn unit_entry(
    name: impl Into<String>,
    buyers: Vec<Distribution>,
    sellers: Vec<Distribution>,
    constraint: Constraint,
) -> CorpusEntry {
    entry(name, Instance::unit_market(buyers, sellers, constraint).expect("valid corpus entry"))
}

// ---------------------------------------------------------------------------
// Bilateral trade
// ---------------------------------------------------------------------------

/// A seeded scalar distribution: `points` distinct values drawn from
/// `lo..=hi` quarters, with small-rational probabilities summing to one.
fn random_scalar(rng: &mut ChaCha8Rng, points: usize, lo: i64, hi: i64) -> Distribution {
    let denominator = [1i64, 2, 4][rng.gen_range(0..3)];
    let mut numerators = BTreeSet::new();
    while numerators.len() < points {
        numerators.insert(rng.gen_range(lo..=hi));
    }
    let weights: Vec<i64> = (0..points).map(|_| rng.gen_range(1..=4)).collect();
    let total: i64 = weights.iter().sum();
    Distribution::scalar(
        numerators
            .into_iter()
            .zip(weights)
            .map(|(v, w)| (rat(v, denominator), rat(w, total)))
            .collect(),
    )
    .expect("distinct values and positive weights")
}

/// Twenty-two bilateral-trade instances. Every agent has a two- to
/// four-point value support; the hand-built entries cover a wide gap, a
/// dominated buyer, identical supports, and dense overlapping supports,
/// and the rest sweep support-size combinations pseudo-randomly.
pub fn bilateral() -> Vec<CorpusEntry> {
    let mut entries = vec![
        unit_entry("bilateral-gap", vec![coin(3, 9)], vec![coin(0, 2)], Constraint::Unconstrained),
        unit_entry(
            "bilateral-dominated-buyer",
            vec![coin(0, 1)],
            vec![coin(4, 6)],
            Constraint::Unconstrained,
        ),
        unit_entry(
            "bilateral-identical-supports",
            vec![coin(2, 4)],
            vec![coin(2, 4)],
            Constraint::Unconstrained,
        ),
        unit_entry(
            "bilateral-three-point",
            vec![three(1, 5, 9)],
            vec![three(0, 2, 4)],
            Constraint::Unconstrained,
        ),
        unit_entry(
            "bilateral-four-point",
            vec![
                Distribution::scalar(
                    [1, 3, 5, 7].iter().map(|&v| (rat_int(v), rat(1, 4))).collect(),
                )
                .expect("valid"),
            ],
            vec![
                Distribution::scalar(
                    [0, 2, 4, 6].iter().map(|&v| (rat_int(v), rat(1, 4))).collect(),
                )
                .expect("valid"),
            ],
            Constraint::Unconstrained,
        ),
    ];
    let shapes = [(2, 2), (3, 2), (2, 3), (4, 2), (3, 3), (2, 4), (4, 3), (3, 4), (4, 4)];
    for at in 0..17 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + at as u64);
        let (buyer_points, seller_points) = shapes[at % shapes.len()];
        entries.push(unit_entry(
            format!("bilateral-random-{:02}", at + 1),
            vec![random_scalar(&mut rng, buyer_points, 2, 12)],
            vec![random_scalar(&mut rng, seller_points, 0, 6)],
            Constraint::Unconstrained,
        ));
    }
    entries
}

// ---------------------------------------------------------------------------
// Matroid double auctions
// ---------------------------------------------------------------------------

/// Twenty-one matroid markets: seven uniform, seven partition, seven
/// graphic. Buyers and sellers are scalar with supports of at most three
/// points; every instance keeps at least one stochastic agent, and the
/// profile support products stay small enough for exhaustive-order and
/// structural-property checks. Instances with five buyers carry at most
/// two sellers and vice versa.
pub fn matroid() -> Vec<CorpusEntry> {
    let uniform = |ground: usize, rank: usize| {
        Constraint::Matroid(Matroid::uniform(ground, rank).expect("rank fits ground"))
    };
    let partition = |blocks: Vec<Vec<usize>>, caps: Vec<usize>| {
        Constraint::Matroid(Matroid::partition(blocks, caps).expect("valid partition"))
    };
    let graphic = |edges: Vec<(usize, usize)>| Constraint::Matroid(Matroid::graphic(edges));

    vec![
        // Uniform: rank caps from scarce single-winner markets to free ones.
        unit_entry("uniform-1", vec![coin(2, 5), coin(1, 4)], vec![det(0)], uniform(2, 1)),
        unit_entry(
            "uniform-2",
            vec![det(5), coin(1, 3), coin(2, 6)],
            vec![det(0), det(1)],
            uniform(3, 2),
        ),
        unit_entry(
            "uniform-3",
            vec![coin(1, 7), det(3), det(2)],
            vec![det(0), coin(0, 2), det(1)],
            uniform(3, 3),
        ),
        unit_entry(
            "uniform-4",
            vec![coin(0, 8), det(4), det(3), det(1)],
            vec![det(2), det(0)],
            uniform(4, 1),
        ),
        unit_entry(
            "uniform-5",
            vec![det(6), det(4), three(1, 5, 9), det(2), det(1)],
            vec![det(0), det(0)],
            uniform(5, 2),
        ),
        unit_entry(
            "uniform-6",
            vec![coin(2, 9), det(4), three(1, 3, 6)],
            vec![det(0), det(1), det(0), det(2)],
            uniform(3, 2),
        ),
        unit_entry(
            "uniform-7",
            vec![det(9), det(7), det(5), coin(0, 12), det(2)],
            vec![coin(1, 3)],
            uniform(5, 1),
        ),
        // Partition: block capacities force cross-block competition.
        unit_entry(
            "partition-1",
            vec![coin(3, 7), coin(2, 5)],
            vec![det(0)],
            partition(vec![vec![0, 1]], vec![1]),
        ),
        unit_entry(
            "partition-2",
            vec![det(5), coin(1, 3), coin(2, 4)],
            vec![det(0), det(0)],
            partition(vec![vec![0, 1], vec![2]], vec![1, 1]),
        ),
        unit_entry(
            "partition-3",
            vec![coin(2, 8), det(6), coin(1, 5), det(3)],
            vec![det(0), det(1)],
            partition(vec![vec![0, 1], vec![2, 3]], vec![1, 1]),
        ),
        unit_entry(
            "partition-4",
            vec![det(7), coin(2, 6), det(4), three(0, 3, 9)],
            vec![det(0), det(0), det(1)],
            partition(vec![vec![0, 1, 2], vec![3]], vec![2, 1]),
        ),
        unit_entry(
            "partition-5",
            vec![det(8), coin(2, 4), det(5), det(3), coin(0, 6)],
            vec![det(0), det(2)],
            partition(vec![vec![0, 1], vec![2, 3], vec![4]], vec![1, 1, 1]),
        ),
        unit_entry(
            "partition-6",
            vec![three(1, 4, 7), det(5), coin(2, 6)],
            vec![det(0), det(0), det(1), det(3)],
            partition(vec![vec![0], vec![1, 2]], vec![1, 2]),
        ),
        unit_entry(
            "partition-7",
            vec![coin(1, 9), det(4), coin(3, 5), det(2)],
            vec![coin(0, 2)],
            partition(vec![vec![0, 2], vec![1, 3]], vec![1, 1]),
        ),
        // Graphic: buyers are edges, served sets must form forests.
        unit_entry(
            "graphic-1",
            vec![det(4), coin(1, 5), det(3)],
            vec![det(0), det(1)],
            graphic(vec![(0, 1), (1, 2), (2, 0)]),
        ),
        unit_entry(
            "graphic-2",
            vec![coin(2, 6), det(5), coin(1, 3)],
            vec![det(0), det(0)],
            graphic(vec![(0, 1), (0, 1), (1, 2)]),
        ),
        unit_entry(
            "graphic-3",
            vec![det(6), coin(2, 4), det(3), det(5)],
            vec![det(0), det(1), det(0)],
            graphic(vec![(0, 1), (1, 2), (2, 3), (3, 0)]),
        ),
        unit_entry(
            "graphic-4",
            vec![coin(3, 9), det(5), det(4), coin(0, 2)],
            vec![det(0), det(1)],
            graphic(vec![(0, 1), (1, 2), (2, 0), (2, 3)]),
        ),
        unit_entry(
            "graphic-5",
            vec![det(7), det(5), coin(1, 3), det(4), det(2)],
            vec![det(0)],
            graphic(vec![(0, 1), (1, 2), (2, 0), (0, 3), (1, 3)]),
        ),
        unit_entry(
            "graphic-6",
            vec![coin(2, 8), three(1, 4, 6), det(5)],
            vec![det(0), det(1), det(2), det(0)],
            graphic(vec![(0, 1), (0, 1), (0, 2)]),
        ),
        unit_entry(
            "graphic-7",
            vec![coin(1, 7), det(6), det(2), det(4)],
            vec![det(0), coin(0, 2)],
            graphic(vec![(0, 1), (0, 2), (0, 3), (0, 1)]),
        ),
    ]
}

// ---------------------------------------------------------------------------
// Combinatorial markets
// ---------------------------------------------------------------------------

/// Sixteen combinatorial markets over at most four heterogeneous items:
/// eight with genuinely fractional-substitutes buyers (several clauses per
/// valuation) and eight where everyone is additive. Sellers own one item
/// each and value it as a scalar.
pub fn combinatorial() -> Vec<CorpusEntry> {
    let unconstrained = || Constraint::Unconstrained;
    vec![
        // Substitutes buyers.
        unit_entry(
            "xos-1",
            vec![sure(xos(&[&[3, 1], &[1, 3]])), sure(additive(&[2, 2]))],
            vec![owner_sure(0, 1), owner_sure(1, 0)],
            unconstrained(),
        ),
        unit_entry(
            "xos-2",
            vec![either(additive(&[4, 0]), additive(&[0, 4])), sure(additive(&[2, 2]))],
            vec![owner_sure(0, 1), owner_sure(1, 1)],
            unconstrained(),
        ),
        unit_entry(
            "xos-3",
            vec![
                sure(xos(&[&[5, 2, 0], &[2, 2, 3]])),
                either(additive(&[1, 1, 1]), additive(&[3, 0, 1])),
            ],
            vec![owner_sure(0, 0), owner_sure(1, 1), owner_sure(2, 2)],
            unconstrained(),
        ),
        unit_entry(
            "xos-4",
            vec![
                sure(xos(&[&[4, 1, 1], &[1, 4, 1]])),
                sure(additive(&[2, 3, 0])),
                either(additive(&[0, 0, 5]), additive(&[2, 0, 2])),
            ],
            vec![owner_sure(0, 1), owner_sure(1, 0), owner_sure(2, 1)],
            unconstrained(),
        ),
        unit_entry(
            "xos-5",
            vec![
                sure(xos(&[&[6, 2, 1, 0], &[2, 2, 2, 2], &[0, 1, 2, 6]])),
                sure(additive(&[1, 3, 3, 1])),
            ],
            vec![owner_sure(0, 0), owner_sure(1, 1), owner_sure(2, 0), owner_sure(3, 2)],
            unconstrained(),
        ),
        unit_entry(
            "xos-6",
            vec![
                sure(xos(&[&[5, 0], &[0, 5]])),
                sure(additive(&[3, 3])),
                sure(xos(&[&[2, 2], &[4, 0]])),
            ],
            vec![owner_coin(0, 0, 2), owner_sure(1, 1)],
            unconstrained(),
        ),
        unit_entry(
            "xos-7",
            vec![
                either(xos(&[&[4, 2, 0], &[0, 2, 4]]), additive(&[1, 1, 1])),
                either(additive(&[3, 0, 3]), additive(&[0, 4, 0])),
            ],
            vec![owner_sure(0, 1), owner_sure(1, 0), owner_sure(2, 1)],
            unconstrained(),
        ),
        unit_entry(
            "xos-8",
            vec![
                sure(xos(&[&[7, 3, 1, 0], &[3, 3, 3, 1]])),
                sure(xos(&[&[0, 2, 5, 2], &[2, 2, 2, 4]])),
                sure(additive(&[2, 0, 0, 6])),
            ],
            vec![owner_sure(0, 0), owner_sure(1, 1), owner_sure(2, 2), owner_sure(3, 0)],
            unconstrained(),
        ),
        // Everyone additive.
        unit_entry(
            "additive-1",
            vec![sure(additive(&[5, 1])), sure(additive(&[1, 5]))],
            vec![owner_sure(0, 0), owner_sure(1, 0)],
            unconstrained(),
        ),
        unit_entry(
            "additive-2",
            vec![either(additive(&[6, 0]), additive(&[2, 2])), sure(additive(&[3, 3]))],
            vec![owner_sure(0, 1), owner_sure(1, 0)],
            unconstrained(),
        ),
        unit_entry(
            "additive-3",
            vec![sure(additive(&[4, 2, 1])), sure(additive(&[1, 3, 4]))],
            vec![owner_sure(0, 0), owner_sure(1, 1), owner_sure(2, 0)],
            unconstrained(),
        ),
        unit_entry(
            "additive-4",
            vec![
                sure(additive(&[5, 0, 2])),
                sure(additive(&[2, 4, 0])),
                sure(additive(&[0, 2, 5])),
            ],
            vec![owner_sure(0, 1), owner_coin(1, 0, 2), owner_sure(2, 0)],
            unconstrained(),
        ),
        unit_entry(
            "additive-5",
            vec![sure(additive(&[3, 3, 2, 2])), sure(additive(&[2, 2, 3, 3]))],
            vec![owner_sure(0, 0), owner_sure(1, 1), owner_sure(2, 1), owner_sure(3, 0)],
            unconstrained(),
        ),
        unit_entry(
            "additive-6",
            vec![
                sure(additive(&[7, 1])),
                either(additive(&[2, 6]), additive(&[4, 4])),
                sure(additive(&[3, 3])),
            ],
            vec![owner_sure(0, 2), owner_sure(1, 0)],
            unconstrained(),
        ),
        unit_entry(
            "additive-7",
            vec![
                either(additive(&[4, 0, 2]), additive(&[0, 4, 2])),
                sure(additive(&[3, 3, 0])),
                sure(additive(&[1, 1, 5])),
            ],
            vec![owner_sure(0, 0), owner_sure(1, 0), owner_sure(2, 2)],
            unconstrained(),
        ),
        unit_entry(
            "additive-8",
            vec![
                sure(additive(&[6, 2, 1, 0])),
                sure(additive(&[1, 5, 2, 1])),
                sure(additive(&[0, 1, 4, 3])),
                sure(additive(&[2, 0, 1, 5])),
            ],
            vec![owner_sure(0, 0), owner_sure(1, 1), owner_sure(2, 0), owner_sure(3, 1)],
            unconstrained(),
        ),
    ]
}

// ---------------------------------------------------------------------------
// Knapsack double auctions
// ---------------------------------------------------------------------------

fn knapsack_entry(
    name: &str,
    weights: Vec<Rat>,
    buyers: Vec<Distribution>,
    sellers: Vec<Distribution>,
) -> CorpusEntry {
    unit_entry(name, buyers, sellers, Constraint::Knapsack { weights })
}

/// Sixteen knapsack markets with two to four supply units where every
/// buyer demands at most half the capacity, the regime in which the
/// stronger constants hold.
pub fn knapsack_restricted() -> Vec<CorpusEntry> {
    vec![
        knapsack_entry(
            "knapsack-01",
            vec![rat(1, 2), rat(1, 2), rat(1, 3)],
            vec![coin(4, 8), det(6), det(3)],
            vec![det(0), det(1)],
        ),
        knapsack_entry(
            "knapsack-02",
            vec![rat(1, 2), rat(1, 4), rat(1, 4)],
            vec![det(7), coin(2, 6), det(4)],
            vec![det(0), det(0)],
        ),
        knapsack_entry(
            "knapsack-03",
            vec![rat(1, 3), rat(1, 3), rat(1, 3)],
            vec![coin(3, 9), det(5), coin(1, 7)],
            vec![det(0), det(1), det(0)],
        ),
        knapsack_entry(
            "knapsack-04",
            vec![rat(1, 2), rat(1, 3), rat(1, 6)],
            vec![det(8), three(2, 5, 9), det(3)],
            vec![det(1), det(0), det(2)],
        ),
        knapsack_entry(
            "knapsack-05",
            vec![rat(1, 4), rat(1, 4), rat(1, 4), rat(1, 4)],
            vec![det(6), det(5), coin(2, 4), det(3)],
            vec![det(0), det(0), det(1), det(0)],
        ),
        knapsack_entry(
            "knapsack-06",
            vec![rat(1, 2), rat(1, 2)],
            vec![coin(5, 11), coin(3, 7)],
            vec![det(0), coin(0, 2)],
        ),
        knapsack_entry(
            "knapsack-07",
            vec![rat(2, 5), rat(3, 10), rat(1, 5), rat(1, 10)],
            vec![det(9), det(6), coin(2, 8), det(4)],
            vec![det(0), det(1)],
        ),
        knapsack_entry(
            "knapsack-08",
            vec![rat(1, 2), rat(3, 8), rat(1, 8)],
            vec![three(1, 6, 10), det(5), det(2)],
            vec![det(0), det(0), det(1)],
        ),
        knapsack_entry(
            "knapsack-09",
            vec![rat(1, 3), rat(1, 4), rat(1, 6), rat(1, 8), rat(1, 8)],
            vec![det(10), det(7), coin(3, 5), det(4), det(2)],
            vec![det(0), det(1), det(0), det(2)],
        ),
        knapsack_entry(
            "knapsack-10",
            vec![rat(1, 2), rat(1, 2), rat(1, 2)],
            vec![det(6), coin(2, 10), det(4)],
            vec![det(1), det(0)],
        ),
        knapsack_entry(
            "knapsack-11",
            vec![rat(1, 4), rat(1, 4), rat(1, 2)],
            vec![coin(1, 5), det(8), det(6)],
            vec![det(0), det(0), coin(1, 3)],
        ),
        knapsack_entry(
            "knapsack-12",
            vec![rat(1, 5), rat(1, 5), rat(1, 5), rat(1, 5)],
            vec![det(5), det(4), det(6), coin(2, 8)],
            vec![det(0), det(1), det(0), det(1)],
        ),
        knapsack_entry(
            "knapsack-13",
            vec![rat(1, 2), rat(2, 5)],
            vec![three(2, 6, 12), det(7)],
            vec![det(0), det(2)],
        ),
        knapsack_entry(
            "knapsack-14",
            vec![rat(3, 8), rat(1, 4), rat(1, 4), rat(1, 8)],
            vec![det(9), coin(4, 6), det(3), det(5)],
            vec![det(0), det(1), det(2)],
        ),
        knapsack_entry(
            "knapsack-15",
            vec![rat(1, 2), rat(1, 3), rat(1, 4), rat(1, 6)],
            vec![det(11), det(8), det(5), coin(1, 9)],
            vec![det(0), det(0), det(1), det(0)],
        ),
        knapsack_entry(
            "knapsack-16",
            vec![rat(1, 6), rat(1, 6), rat(1, 3)],
            vec![coin(2, 4), coin(3, 7), det(6)],
            vec![det(0), det(1)],
        ),
    ]
}

/// Ten knapsack markets with weights on both sides of half capacity,
/// including all-heavy and single-unit degenerate cases, exercising the
/// branch that serves whichever weight class promises more welfare.
pub fn knapsack_general() -> Vec<CorpusEntry> {
    vec![
        knapsack_entry(
            "general-01",
            vec![rat(3, 4), rat(1, 2)],
            vec![det(8), det(5)],
            vec![det(0), det(1)],
        ),
        knapsack_entry(
            "general-02",
            vec![rat(2, 3), rat(1, 3), rat(1, 4)],
            vec![coin(2, 6), det(7), det(4)],
            vec![det(0), det(0)],
        ),
        knapsack_entry(
            "general-03",
            vec![rat_int(1), rat(1, 2), rat(1, 3)],
            vec![det(9), coin(3, 5), det(2)],
            vec![det(0), det(1), det(0)],
        ),
        knapsack_entry(
            "general-04",
            vec![rat(3, 5), rat(2, 5), rat(1, 5), rat(1, 5)],
            vec![det(3), coin(4, 8), det(6), det(5)],
            vec![det(0), det(2)],
        ),
        knapsack_entry(
            "general-05",
            vec![rat(7, 8), rat(1, 4), rat(1, 8)],
            vec![coin(6, 10), det(4), det(3)],
            vec![det(0), det(1), det(2), det(0)],
        ),
        knapsack_entry(
            "general-06",
            vec![rat(2, 3), rat(3, 4)],
            vec![coin(2, 8), det(5)],
            vec![det(1)],
        ),
        knapsack_entry(
            "general-07",
            vec![rat(5, 6), rat(1, 2), rat(1, 3), rat(1, 6)],
            vec![det(10), det(7), coin(1, 5), det(3)],
            vec![det(0), det(0), det(1)],
        ),
        knapsack_entry(
            "general-08",
            vec![rat(9, 10), rat(3, 5), rat(1, 2), rat(2, 5), rat(1, 10)],
            vec![det(2), det(3), coin(5, 9), det(6), det(4)],
            vec![det(0), det(1)],
        ),
        knapsack_entry(
            "general-09",
            vec![rat_int(1), rat_int(1)],
            vec![coin(5, 11), coin(4, 8)],
            vec![det(0), det(0), det(1), det(2)],
        ),
        knapsack_entry(
            "general-10",
            vec![rat(4, 5), rat(3, 5), rat(1, 2), rat(1, 4), rat(1, 5)],
            vec![det(8), coin(2, 6), det(5), det(7), det(1)],
            vec![det(0), det(2), coin(0, 2)],
        ),
    ]
}

// ---------------------------------------------------------------------------
// The tight worst-case instance
// ---------------------------------------------------------------------------

/// The market pinning the factor-two guarantee: one free seller, one
/// certain buyer worth 1, and one long-shot buyer worth `1/epsilon` with
/// probability `epsilon`. Letting the certain buyer pre-empt the single
/// unit caps welfare at 1 against an expected optimum of `2 - epsilon`, so
/// the worst-order ratio approaches one half from above as `epsilon`
/// shrinks. `epsilon` must lie strictly between 0 and 1.
pub fn tight_instance(epsilon: &Rat) -> CorpusEntry {
    assert!(
        epsilon > &rat_int(0) && epsilon < &rat_int(1),
        "epsilon must lie strictly between 0 and 1"
    );
    let jackpot = rat_int(1) / epsilon;
    let long_shot = Distribution::scalar(vec![
        (rat_int(0), rat_int(1) - epsilon),
        (jackpot, epsilon.clone()),
    ])
    .expect("two-point support");
    unit_entry(
        format!("tight-{epsilon}"),
        vec![det(1), long_shot],
        vec![det(0)],
        Constraint::Matroid(Matroid::uniform(2, 1).expect("rank fits ground")),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::ProfileSpace;

    #[test]
    fn family_sizes_match_their_contracts() {
        assert_eq!(bilateral().len(), 22);
        assert_eq!(matroid().len(), 21);
        assert_eq!(combinatorial().len(), 16);
        assert_eq!(knapsack_restricted().len(), 16);
        assert_eq!(knapsack_general().len(), 10);
    }

    #[test]
    fn matroid_family_balances_its_three_constraint_kinds() {
        let names: Vec<String> = matroid().into_iter().map(|e| e.name).collect();
        for prefix in ["uniform", "partition", "graphic"] {
            assert_eq!(names.iter().filter(|n| n.starts_with(prefix)).count(), 7);
        }
    }

    #[test]
    fn bilateral_supports_stay_between_two_and_four_points() {
        for entry in bilateral() {
            assert_eq!(entry.instance.n_buyers(), 1);
            assert_eq!(entry.instance.n_sellers(), 1);
            for dist in entry.instance.buyers().iter().chain(entry.instance.sellers()) {
                assert!(
                    (2..=4).contains(&dist.support_len()),
                    "{} has a {}-point support",
                    entry.name,
                    dist.support_len()
                );
            }
        }
    }

    #[test]
    fn matroid_entries_stay_inside_the_exhaustive_budget() {
        for entry in matroid() {
            let n = entry.instance.n_buyers();
            let k = entry.instance.n_sellers();
            assert!(n <= 5 && k <= 4, "{} is {n} by {k}", entry.name);
            assert!(n < 5 || k <= 2, "{} maxes both dimensions", entry.name);
            assert!(k < 4 || n <= 3, "{} maxes both dimensions", entry.name);
            let profiles = ProfileSpace::new(&entry.instance, 1 << 20).unwrap().len();
            assert!(profiles <= 64, "{} has {profiles} profiles", entry.name);
            let mut stochastic = 0;
            for dist in entry.instance.buyers().iter().chain(entry.instance.sellers()) {
                assert!(dist.support_len() <= 3, "{} has a wide support", entry.name);
                if dist.support_len() >= 2 {
                    stochastic += 1;
                }
            }
            assert!(stochastic >= 1, "{} is fully deterministic", entry.name);
        }
    }

    #[test]
    fn combinatorial_entries_have_at_most_four_items_owned_singly() {
        for entry in combinatorial() {
            let m = entry.instance.n_items();
            assert!(m <= 4, "{} has {m} items", entry.name);
            assert_eq!(entry.instance.n_sellers(), m);
            let additive_only = entry.name.starts_with("additive");
            for (at, dist) in entry.instance.buyers().iter().enumerate() {
                for (valuation, _) in dist.support() {
                    let Valuation::Xos(x) = valuation else {
                        panic!("{} buyer {at} is scalar", entry.name)
                    };
                    if additive_only {
                        assert_eq!(x.clauses().len(), 1, "{} buyer {at} not additive", entry.name);
                    }
                }
            }
        }
    }

    #[test]
    fn knapsack_weights_respect_their_regimes() {
        for entry in knapsack_restricted() {
            let Constraint::Knapsack { weights } = entry.instance.constraint() else {
                panic!("{} lost its knapsack constraint", entry.name)
            };
            assert!((2..=4).contains(&entry.instance.n_sellers()), "{}", entry.name);
            for w in weights {
                assert!(w <= &rat(1, 2), "{} has a heavy buyer", entry.name);
            }
        }
        for entry in knapsack_general() {
            let Constraint::Knapsack { weights } = entry.instance.constraint() else {
                panic!("{} lost its knapsack constraint", entry.name)
            };
            assert!(
                weights.iter().any(|w| w > &rat(1, 2)),
                "{} has no heavy buyer",
                entry.name
            );
        }
    }

    #[test]
    fn tight_instance_has_the_advertised_expected_optimum() {
        let entry = tight_instance(&rat(1, 10));
        let space = ProfileSpace::new(&entry.instance, 1 << 10).unwrap();
        let mut expected = rat_int(0);
        for at in 0..space.len() {
            let (profile, prob) = space.decode(at);
            let top = profile
                .unit_values()
                .expect("scalar profile")
                .0
                .into_iter()
                .max()
                .expect("two buyers");
            expected += prob * top;
        }
        assert_eq!(expected, rat(19, 10));
    }

    #[test]
    fn corpus_construction_is_deterministic() {
        let first: Vec<String> = bilateral().iter().map(|e| format!("{:?}", e.instance)).collect();
        let second: Vec<String> = bilateral().iter().map(|e| format!("{:?}", e.instance)).collect();
        assert_eq!(first, second);
    }
}
