//! Acceptance gate for the shipped mechanisms.
//!
//! Twelve checks, one test each, certifying every advertised guarantee on
//! the built-in corpora at desk scale: approximation-ratio floors per
//! market family (worst case over adversarial arrival orders where the
//! mechanism has choice points), universal budget audits, truthfulness and
//! participation sweeps with sabotaged variants as sensitivity controls,
//! the structural price properties, the exact telescoping identity, the
//! tight worst-case instance, and agreement between the fast oracles and
//! naive enumeration. Each test prints one `PASS`/`FAIL` line.
//!
//! Everything runs in exact rational arithmetic; failures print the
//! offending instance and measured value.

use std::collections::BTreeSet;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use double_auction::corpus::{self, CorpusEntry};
use double_auction::harness::{
    deviation_test, dsic_report, expected_ratio, ir_test, lemma_suite, lemma_suite_with_scale,
    run_audits, BudgetSummary, OrderPolicy, RatioReport, Strategy, LEMMA_NAMES,
};
use double_auction::market::{AgentId, Constraint, Distribution, Instance};
use double_auction::matroid::{
    exhaustive_max_weight, max_weight_basis, Matroid, MatroidView,
};
use double_auction::mechanism::Mechanism;
use double_auction::oracle::{naive_knapsack, opt_knapsack};
use double_auction::rational::{rat, rat_int, Rat};
use double_auction::Engine;

fn verdict(number: usize, name: &str, passed: bool, detail: &str) {
    let word = if passed { "PASS" } else { "FAIL" };
    println!("acceptance {number:02} {name}: {word} ({detail})");
    assert!(passed, "acceptance {number:02} {name} failed: {detail}");
}

fn half() -> Rat {
    rat(1, 2)
}

// ---------------------------------------------------------------------------
// Shared corpus measurements (criteria 1 through 7)
// ---------------------------------------------------------------------------

struct FamilyMeasurement {
    reports: Vec<(String, RatioReport)>,
    elapsed: Duration,
}

impl FamilyMeasurement {
    fn worst(&self) -> (&str, &Rat) {
        self.reports
            .iter()
            .map(|(name, report)| (name.as_str(), &report.ratio))
            .min_by(|a, b| a.1.cmp(b.1))
            .expect("non-empty family")
    }

    fn budget(&self) -> BudgetSummary {
        let mut total = BudgetSummary::default();
        for (_, report) in &self.reports {
            total.runs += report.budget.runs;
            total.failures += report.budget.failures;
        }
        total
    }
}

fn measure_family(entries: &[CorpusEntry], mechanism: Mechanism) -> FamilyMeasurement {
    let start = Instant::now();
    let policy = OrderPolicy::exhaustive_default();
    let reports = entries
        .iter()
        .map(|entry| {
            let prepared = mechanism
                .prepare(&entry.instance, Engine::exact_default())
                .unwrap_or_else(|e| panic!("{} rejects {}: {e}", mechanism.name(), entry.name));
            let report = expected_ratio(&prepared, &policy)
                .unwrap_or_else(|e| panic!("measuring {} on {}: {e}", mechanism.name(), entry.name));
            (entry.name.clone(), report)
        })
        .collect();
    FamilyMeasurement { reports, elapsed: start.elapsed() }
}

struct Measurements {
    bilateral: FamilyMeasurement,
    matroid_sbb: FamilyMeasurement,
    matroid_wbb: FamilyMeasurement,
    combinatorial: FamilyMeasurement,
    knapsack_sbb: FamilyMeasurement,
    knapsack_wbb: FamilyMeasurement,
    general_sbb: FamilyMeasurement,
    general_wbb: FamilyMeasurement,
}

impl Measurements {
    fn families(&self) -> [&FamilyMeasurement; 8] {
        [
            &self.bilateral,
            &self.matroid_sbb,
            &self.matroid_wbb,
            &self.combinatorial,
            &self.knapsack_sbb,
            &self.knapsack_wbb,
            &self.general_sbb,
            &self.general_wbb,
        ]
    }
}

fn measurements() -> &'static Measurements {
    static MEASUREMENTS: OnceLock<Measurements> = OnceLock::new();
    MEASUREMENTS.get_or_init(|| {
        let bilateral = corpus::bilateral();
        let matroid = corpus::matroid();
        let combinatorial = corpus::combinatorial();
        let restricted = corpus::knapsack_restricted();
        let general = corpus::knapsack_general();
        Measurements {
            bilateral: measure_family(&bilateral, Mechanism::Bilateral),
            matroid_sbb: measure_family(&matroid, Mechanism::MatroidSbb),
            matroid_wbb: measure_family(&matroid, Mechanism::MatroidWbb),
            combinatorial: measure_family(&combinatorial, Mechanism::Combinatorial),
            knapsack_sbb: measure_family(&restricted, Mechanism::KnapsackSbb),
            knapsack_wbb: measure_family(&restricted, Mechanism::KnapsackWbb),
            general_sbb: measure_family(&general, Mechanism::KnapsackGeneralSbb),
            general_wbb: measure_family(&general, Mechanism::KnapsackGeneralWbb),
        }
    })
}

fn family_floor(
    number: usize,
    name: &str,
    family: &FamilyMeasurement,
    minimum_entries: usize,
    floor: &Rat,
    time_limit: Option<Duration>,
) {
    let (worst_name, worst_ratio) = family.worst();
    let enough = family.reports.len() >= minimum_entries;
    let in_time = time_limit.map_or(true, |limit| family.elapsed < limit);
    let passed = enough && worst_ratio >= floor && in_time;
    verdict(
        number,
        name,
        passed,
        &format!(
            "{} instances, worst ratio {} on {}, {:?} elapsed",
            family.reports.len(),
            worst_ratio,
            worst_name,
            family.elapsed
        ),
    );
}

#[test]
fn acceptance_01_bilateral_half_of_expected_max() {
    family_floor(
        1,
        "bilateral welfare at least half the expected max",
        &measurements().bilateral,
        20,
        &half(),
        Some(Duration::from_secs(1)),
    );
}

#[test]
fn acceptance_02_matroid_strong_budget_third() {
    family_floor(
        2,
        "matroid strong-budget ratio at least one third",
        &measurements().matroid_sbb,
        20,
        &rat(1, 3),
        Some(Duration::from_secs(30)),
    );
}

#[test]
fn acceptance_03_matroid_weak_budget_half_worst_order() {
    family_floor(
        3,
        "matroid weak-budget ratio at least one half over all orders",
        &measurements().matroid_wbb,
        20,
        &half(),
        Some(Duration::from_secs(120)),
    );
}

#[test]
fn acceptance_04_combinatorial_half_worst_order() {
    family_floor(
        4,
        "combinatorial ratio at least one half over all orders",
        &measurements().combinatorial,
        15,
        &half(),
        None,
    );
}

#[test]
fn acceptance_05_knapsack_restricted_constants() {
    let m = measurements();
    let (sbb_name, sbb_ratio) = m.knapsack_sbb.worst();
    let (wbb_name, wbb_ratio) = m.knapsack_wbb.worst();
    let enough = m.knapsack_sbb.reports.len() >= 15 && m.knapsack_wbb.reports.len() >= 15;
    let passed = enough && sbb_ratio >= &rat(1, 7) && wbb_ratio >= &rat(1, 5);
    verdict(
        5,
        "half-capacity knapsack floors one seventh and one fifth",
        passed,
        &format!(
            "strong worst {sbb_ratio} on {sbb_name}, weak worst {wbb_ratio} on {wbb_name}"
        ),
    );
}

#[test]
fn acceptance_06_knapsack_general_constants() {
    let m = measurements();
    let (sbb_name, sbb_ratio) = m.general_sbb.worst();
    let (wbb_name, wbb_ratio) = m.general_wbb.worst();
    let enough = m.general_sbb.reports.len() >= 10 && m.general_wbb.reports.len() >= 10;
    let passed = enough && sbb_ratio >= &rat(1, 10) && wbb_ratio >= &rat(1, 7);
    verdict(
        6,
        "mixed-weight knapsack floors one tenth and one seventh",
        passed,
        &format!(
            "strong worst {sbb_ratio} on {sbb_name}, weak worst {wbb_ratio} on {wbb_name}"
        ),
    );
}

#[test]
fn acceptance_07_budget_audits_universal() {
    let mut total = BudgetSummary::default();
    for family in measurements().families() {
        let fold = family.budget();
        total.runs += fold.runs;
        total.failures += fold.failures;
    }
    verdict(
        7,
        "every audited run satisfies its budget regime",
        total.runs > 0 && total.all_passed(),
        &format!("{} runs audited, {} failures", total.runs, total.failures),
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: truthfulness, participation, and the sabotaged variants
// ---------------------------------------------------------------------------

fn bilateral_fixture(buyer: Distribution, seller: Distribution) -> Arc<Instance> {
    Arc::new(
        Instance::unit_market(vec![buyer], vec![seller], Constraint::Unconstrained)
            .expect("valid fixture"),
    )
}

#[test]
fn acceptance_08_truthfulness_and_participation() {
    let engine = Engine::exact_default();
    let strategy = Strategy::Canonical;
    let bilateral = corpus::bilateral();
    let matroid = corpus::matroid();
    let combinatorial = corpus::combinatorial();
    let restricted = corpus::knapsack_restricted();
    let general = corpus::knapsack_general();
    let sweep: [(&[CorpusEntry], &[Mechanism]); 5] = [
        (&bilateral, &[Mechanism::Bilateral]),
        (&matroid, &[Mechanism::MatroidSbb, Mechanism::MatroidWbb]),
        (&combinatorial, &[Mechanism::Combinatorial]),
        (&restricted, &[Mechanism::KnapsackSbb, Mechanism::KnapsackWbb]),
        (&general, &[Mechanism::KnapsackGeneralSbb, Mechanism::KnapsackGeneralWbb]),
    ];

    let mut rows = 0usize;
    let mut worst_margin = rat_int(0);
    let mut first_failure: Option<String> = None;
    let mut ir_rows = 0usize;
    for (entries, mechanisms) in sweep {
        for entry in entries {
            for &mechanism in mechanisms {
                let prepared = mechanism.prepare(&entry.instance, engine).unwrap();
                for row in dsic_report(&prepared, &strategy).unwrap() {
                    rows += 1;
                    if row.margin < worst_margin {
                        worst_margin = row.margin.clone();
                    }
                    if !row.passed() && first_failure.is_none() {
                        first_failure = Some(format!(
                            "{} on {}: {} gains {} by reporting {:?}",
                            mechanism.name(),
                            entry.name,
                            row.agent,
                            -row.margin.clone(),
                            row.best_report,
                        ));
                    }
                }
                let violations = ir_test(&prepared, &strategy).unwrap();
                ir_rows += 1;
                if let Some(v) = violations.first() {
                    if first_failure.is_none() {
                        first_failure = Some(format!(
                            "{} on {}: {} ends at {} below baseline {}",
                            mechanism.name(),
                            entry.name,
                            v.agent,
                            v.utility,
                            v.baseline,
                        ));
                    }
                }
            }
        }
    }

    // The three sabotaged variants must each produce at least one violation;
    // a harness that cannot see planted bugs proves nothing.
    let shaving = Mechanism::MutantPriceShaving
        .prepare(&bilateral_fixture(coin(0, 2), point(0)), engine)
        .unwrap();
    let shaving_caught = deviation_test(&shaving, AgentId::buyer(0), &strategy)
        .unwrap()
        .iter()
        .any(|row| !row.passed());

    let forced = Mechanism::MutantForcedTrade
        .prepare(&bilateral_fixture(coin(0, 2), point(0)), engine)
        .unwrap();
    let forced_caught = !ir_test(&forced, &strategy).unwrap().is_empty();

    let reoffer = Mechanism::MutantReoffer
        .prepare(&bilateral_fixture(point(6), point(0)), engine)
        .unwrap();
    let reoffer_caught = deviation_test(&reoffer, AgentId::buyer(0), &strategy)
        .unwrap()
        .iter()
        .any(|row| !row.passed());

    let clean = first_failure.is_none() && worst_margin == rat_int(0);
    let passed = clean && shaving_caught && forced_caught && reoffer_caught;
    verdict(
        8,
        "no profitable misreport, no participation loss, variants caught",
        passed,
        &format!(
            "{rows} deviation rows and {ir_rows} participation sweeps clean; \
             variants caught: shaving {shaving_caught}, forced {forced_caught}, \
             reoffer {reoffer_caught}{}",
            first_failure.map_or(String::new(), |f| format!("; first failure: {f}"))
        ),
    );
}

fn point(v: i64) -> Distribution {
    Distribution::point(rat_int(v))
}

fn coin(a: i64, b: i64) -> Distribution {
    Distribution::scalar(vec![(rat_int(a), half()), (rat_int(b), half())]).expect("valid")
}

// ---------------------------------------------------------------------------
// Criteria 9 and 10: structural price properties
// ---------------------------------------------------------------------------

#[test]
fn acceptance_09_structural_price_checks() {
    let engine = Engine::exact_default();
    let mut checked = 0usize;
    let mut failure: Option<String> = None;
    for entry in corpus::matroid() {
        let report = lemma_suite(&entry.instance, &engine).unwrap();
        checked += 1;
        if !report.passed() && failure.is_none() {
            let names = report.failed_names().join(", ");
            failure = Some(format!("{} fails {names}", entry.name));
        }
    }

    // Sensitivity control: inflating realized thresholds by 3/2 must break
    // exactly the price-sum bound on this hand-verified market.
    let inflated = Arc::new(
        Instance::unit_market(
            vec![point(5), point(3), point(2)],
            vec![point(0), point(0)],
            Constraint::Matroid(Matroid::uniform(3, 2).expect("valid")),
        )
        .expect("valid"),
    );
    let control = lemma_suite_with_scale(&inflated, &engine, &rat(3, 2)).unwrap();
    let control_caught = control.failed_names() == vec![LEMMA_NAMES[3]];

    let passed = failure.is_none() && control_caught;
    verdict(
        9,
        "all five price properties hold; inflated prices caught",
        passed,
        &format!(
            "{checked} markets checked{}; inflated control breaks price-sum: {control_caught}",
            failure.map_or(String::new(), |f| format!("; {f}"))
        ),
    );
}

#[test]
fn acceptance_10_telescoping_identity() {
    let engine = Engine::exact_default();
    let mut runs = 0usize;
    let mut identities = 0usize;
    let mut failure: Option<String> = None;
    for entry in corpus::matroid() {
        let prepared = Mechanism::MatroidWbb.prepare(&entry.instance, engine).unwrap();
        for strategy in [Strategy::Canonical, Strategy::Greedy, Strategy::Seeded(17)] {
            let report = run_audits(&prepared, &strategy).unwrap();
            runs += report.runs;
            identities += report.telescoping.len();
            if !report.telescoping_exact() && failure.is_none() {
                let row = report
                    .telescoping
                    .iter()
                    .find(|row| !row.holds())
                    .expect("inexact report has a bad row");
                failure = Some(format!(
                    "{} under {}: charged {} vs gap {} on profile {}",
                    entry.name,
                    strategy.label(),
                    row.charged_total,
                    row.price_gap,
                    row.profile,
                ));
            }
            if !report.offers_monotone() && failure.is_none() {
                failure = Some(format!("{} under {}: offers rose", entry.name, strategy.label()));
            }
        }
    }
    verdict(
        10,
        "charged prices exactly telescope the optimum drop",
        runs > 0 && identities > 0 && failure.is_none(),
        &format!(
            "{identities} identities over {runs} runs{}",
            failure.map_or(String::new(), |f| format!("; {f}"))
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 11: the tight worst-case instance
// ---------------------------------------------------------------------------

#[test]
fn acceptance_11_tight_instance_ratio_window() {
    let constant = rat(3, 10);
    let engine = Engine::exact_default();
    let mut detail = Vec::new();
    let mut passed = true;
    for (epsilon, expected_opt) in [(rat(1, 10), rat(19, 10)), (rat(1, 100), rat(199, 100))] {
        let entry = corpus::tight_instance(&epsilon);
        let prepared = Mechanism::MatroidWbb.prepare(&entry.instance, engine).unwrap();
        let report = expected_ratio(&prepared, &OrderPolicy::exhaustive_default()).unwrap();
        let ceiling = half() + &epsilon * &constant;
        let window = report.ratio >= half() && report.ratio <= ceiling;
        passed &= window && report.expected_opt == expected_opt;
        detail.push(format!(
            "eps {epsilon}: opt {}, worst ratio {} in [1/2, {ceiling}]: {window}",
            report.expected_opt, report.ratio
        ));
    }
    verdict(
        11,
        "worst order sits just above one half, slack constant 3/10",
        passed,
        &detail.join("; "),
    );
}

// ---------------------------------------------------------------------------
// Criterion 12: fast oracles agree with naive enumeration
// ---------------------------------------------------------------------------

fn random_matroid(rng: &mut ChaCha8Rng) -> Matroid {
    match rng.gen_range(0..3) {
        0 => {
            let ground = rng.gen_range(1..=12);
            let rank = rng.gen_range(0..=ground);
            Matroid::uniform(ground, rank).expect("rank fits")
        }
        1 => {
            let ground = rng.gen_range(1..=12usize);
            let cuts = rng.gen_range(1..=ground.min(4));
            let mut blocks: Vec<Vec<usize>> = vec![Vec::new(); cuts];
            for element in 0..ground {
                blocks[rng.gen_range(0..cuts)].push(element);
            }
            blocks.retain(|block| !block.is_empty());
            let caps = blocks.iter().map(|block| rng.gen_range(0..=block.len())).collect();
            Matroid::partition(blocks, caps).expect("consistent blocks")
        }
        _ => {
            let vertices = rng.gen_range(2..=6usize);
            let edges = (0..rng.gen_range(1..=12))
                .map(|_| (rng.gen_range(0..vertices), rng.gen_range(0..vertices)))
                .filter(|(a, b)| a != b)
                .collect::<Vec<_>>();
            if edges.is_empty() {
                Matroid::uniform(1, 1).expect("valid")
            } else {
                Matroid::graphic(edges)
            }
        }
    }
}

fn random_independent(rng: &mut ChaCha8Rng, matroid: &Matroid, ground: usize) -> BTreeSet<usize> {
    let mut set = BTreeSet::new();
    for element in 0..ground {
        if rng.gen_bool(0.3) {
            let mut grown = set.clone();
            grown.insert(element);
            if matroid.is_independent(&grown) {
                set = grown;
            }
        }
    }
    set
}

#[test]
fn acceptance_12_oracle_agreement() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    let mut matroid_trials = 0usize;
    let mut failure: Option<String> = None;
    for trial in 0..200 {
        let matroid = random_matroid(&mut rng);
        let explicit = matroid.to_explicit().expect("small ground set");
        let ground = explicit.ground_size();
        let weights: Vec<Rat> =
            (0..ground).map(|_| rat(rng.gen_range(0..=24), 4)).collect();
        let contracted = if rng.gen_bool(0.5) {
            random_independent(&mut rng, &explicit, ground)
        } else {
            BTreeSet::new()
        };
        let rank_cap = rng.gen_range(contracted.len()..=ground.max(contracted.len()));
        let view = MatroidView::new(&explicit, contracted.clone(), rank_cap);
        let greedy = max_weight_basis(&view, &weights).1;
        let exhaustive = exhaustive_max_weight(&view, &weights);
        matroid_trials += 1;
        if greedy != exhaustive && failure.is_none() {
            failure = Some(format!(
                "matroid trial {trial}: greedy {greedy} vs exhaustive {exhaustive} \
                 (contracted {contracted:?}, cap {rank_cap})"
            ));
        }
    }

    let mut knapsack_trials = 0usize;
    for trial in 0..200 {
        let n = rng.gen_range(1..=12);
        let k = rng.gen_range(1..=4usize);
        let values: Vec<Rat> = (0..n).map(|_| rat(rng.gen_range(0..=48), 4)).collect();
        let weights: Vec<Rat> = (0..n).map(|_| rat(rng.gen_range(1..=8), 8)).collect();
        let sellers: Vec<Rat> = (0..k).map(|_| rat(rng.gen_range(0..=12), 4)).collect();
        let fast = opt_knapsack(&values, &weights, &sellers).expect("within size limits").1;
        let naive = naive_knapsack(&values, &weights, &sellers);
        knapsack_trials += 1;
        if fast != naive && failure.is_none() {
            failure = Some(format!("knapsack trial {trial}: fast {fast} vs naive {naive}"));
        }
    }

    let elapsed = start.elapsed();
    let passed = failure.is_none()
        && matroid_trials == 200
        && knapsack_trials == 200
        && elapsed < Duration::from_secs(60);
    verdict(
        12,
        "greedy and branch-and-bound match naive enumeration",
        passed,
        &format!(
            "{matroid_trials} matroid and {knapsack_trials} knapsack trials, {elapsed:?}{}",
            failure.map_or(String::new(), |f| format!("; {f}"))
        ),
    );
}
