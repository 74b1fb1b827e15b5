//! The on-disk market format: one TOML layout for every family, with the
//! `[constraint]` block selecting bilateral/combinatorial (`none`), matroid
//! (`uniform`/`partition`/`graphic`/`explicit`), or knapsack markets.
//!
//! ```toml
//! name = "example"                     # optional
//! items = ["s0", "s1"]                 # optional; defaults to s0..s{k-1}
//!
//! [[buyers]]
//! values = [["1", "1/2"], ["3", "1/2"]]   # scalar: value:probability pairs
//!
//! [[buyers]]
//! [[buyers.support]]                   # bundle valuations: XOS clauses
//! prob = "1"
//! clauses = [{ s0 = "4", s1 = "1" }, { s1 = "3" }]
//!
//! [[sellers]]
//! values = [["0", "1"]]
//! endowment = ["s0"]                   # optional; defaults to item j
//!
//! [constraint]
//! kind = "uniform"                     # none|uniform|partition|graphic|explicit|knapsack
//! rank = 1
//! ```
//!
//! Rationals are written exactly (`"3/4"`, `"2"`, `"0.25"`); knapsack weights
//! sit on the buyers (`weight = "1/2"`). Parsing normalizes to the canonical
//! form [`write_str`] emits, and parse/serialize round-trips are exact.

use double_auction::matroid::Matroid;
use double_auction::rational::{format_rat, parse_rat, rat_int};
use double_auction::{Constraint, Distribution, Instance, Rat, Role, Valuation, XosValuation};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;
use toml::Spanned;

/// A parsed market plus the optional display name carried by the file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NamedInstance {
    pub name: Option<String>,
    pub instance: Arc<Instance>,
}

/// A rejected file: what was wrong and, when known, where (1-based).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub message: String,
    pub position: Option<(usize, usize)>,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.position {
            Some((line, column)) => write!(f, "line {line}, column {column}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ParseError {}

/// Markets that the TOML layout cannot express.
#[derive(Debug, thiserror::Error)]
pub enum WriteError {
    #[error("{role} {index} mixes scalar and bundle valuations in one distribution")]
    MixedSupport { role: &'static str, index: usize },
}

// ---------------------------------------------------------------------------
// Raw document (deserialization side, spans preserved)
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDoc {
    name: Option<String>,
    items: Option<Vec<Spanned<String>>>,
    #[serde(default)]
    buyers: Vec<Spanned<RawAgent>>,
    #[serde(default)]
    sellers: Vec<Spanned<RawAgent>>,
    constraint: Option<RawConstraint>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAgent {
    values: Option<Spanned<Vec<(Spanned<String>, Spanned<String>)>>>,
    support: Option<Spanned<Vec<RawAtom>>>,
    weight: Option<Spanned<String>>,
    endowment: Option<Vec<Spanned<String>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAtom {
    prob: Spanned<String>,
    clauses: Vec<Spanned<BTreeMap<String, Spanned<String>>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstraint {
    kind: Spanned<String>,
    rank: Option<Spanned<i64>>,
    blocks: Option<Vec<Vec<i64>>>,
    capacities: Option<Vec<i64>>,
    edges: Option<Vec<(i64, i64)>>,
    independent: Option<Vec<Vec<i64>>>,
}

/// Byte offset -> 1-based (line, column).
fn position_at(source: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(source.len());
    let before = &source[..offset];
    let line = before.bytes().filter(|&b| b == b'\n').count() + 1;
    let column = before.rfind('\n').map_or(offset + 1, |nl| offset - nl);
    (line, column)
}

struct Ctx<'a> {
    source: &'a str,
}

impl<'a> Ctx<'a> {
    fn err_at(&self, span: std::ops::Range<usize>, message: impl Into<String>) -> ParseError {
        ParseError {
            message: message.into(),
            position: Some(position_at(self.source, span.start)),
        }
    }

    fn err(&self, message: impl Into<String>) -> ParseError {
        ParseError { message: message.into(), position: None }
    }

    fn rat(&self, literal: &Spanned<String>) -> Result<Rat, ParseError> {
        parse_rat(literal.get_ref())
            .map_err(|e| self.err_at(literal.span(), e.to_string()))
    }

    fn index(&self, raw: i64, what: &str, bound: usize, span: &std::ops::Range<usize>) -> Result<usize, ParseError> {
        if raw < 0 || raw as usize >= bound {
            return Err(self.err_at(
                span.clone(),
                format!("{what} {raw} is outside 0..{bound}"),
            ));
        }
        Ok(raw as usize)
    }
}

/// Parse a market file, normalizing to canonical form. Errors carry the
/// offending line and column whenever the source location is known.
pub fn parse_str(source: &str) -> Result<NamedInstance, ParseError> {
    let ctx = Ctx { source };
    let raw: RawDoc = toml::from_str(source).map_err(|e| ParseError {
        message: e.message().to_string(),
        position: e.span().map(|s| position_at(source, s.start)),
    })?;

    // Item universe: explicit list, or one auto-named item per seller.
    let items: Vec<String> = match &raw.items {
        Some(list) => {
            let mut seen = BTreeSet::new();
            for item in list {
                if !seen.insert(item.get_ref().as_str()) {
                    return Err(ctx.err_at(item.span(), format!("item {:?} listed twice", item.get_ref())));
                }
            }
            list.iter().map(|s| s.get_ref().clone()).collect()
        }
        None => (0..raw.sellers.len()).map(|j| format!("s{j}")).collect(),
    };
    let item_index: BTreeMap<&str, usize> =
        items.iter().enumerate().map(|(i, name)| (name.as_str(), i)).collect();

    let constraint = raw.constraint.as_ref();
    let kind = constraint.map_or("none", |c| c.kind.get_ref().as_str());
    let knapsack = kind == "knapsack";

    let mut buyer_weights: Vec<Rat> = Vec::new();
    let mut buyers: Vec<Distribution> = Vec::new();
    for (i, agent) in raw.buyers.iter().enumerate() {
        let decl = agent.get_ref();
        buyers.push(parse_distribution(&ctx, decl, agent.span(), &item_index, "buyer", i)?);
        match (&decl.weight, knapsack) {
            (Some(w), true) => buyer_weights.push(ctx.rat(w)?),
            (Some(w), false) => {
                return Err(ctx.err_at(w.span(), format!("buyer {i} has a weight but the constraint is not a knapsack")));
            }
            (None, true) => {
                return Err(ctx.err_at(agent.span(), format!("buyer {i} needs a weight under the knapsack constraint")));
            }
            (None, false) => {}
        }
        if let Some(endow) = &decl.endowment {
            if let Some(first) = endow.first() {
                return Err(ctx.err_at(first.span(), format!("buyer {i} cannot declare an endowment")));
            }
        }
    }

    let mut sellers: Vec<Distribution> = Vec::new();
    let mut endowment: Vec<BTreeSet<usize>> = Vec::new();
    let mut owner: BTreeMap<usize, usize> = BTreeMap::new();
    for (j, agent) in raw.sellers.iter().enumerate() {
        let decl = agent.get_ref();
        sellers.push(parse_distribution(&ctx, decl, agent.span(), &item_index, "seller", j)?);
        if let Some(w) = &decl.weight {
            return Err(ctx.err_at(w.span(), format!("seller {j} cannot carry a knapsack weight")));
        }
        let bundle = match &decl.endowment {
            Some(list) => {
                let mut bundle = BTreeSet::new();
                for name in list {
                    let Some(&idx) = item_index.get(name.get_ref().as_str()) else {
                        return Err(ctx.err_at(name.span(), format!("unknown item {:?}", name.get_ref())));
                    };
                    if !bundle.insert(idx) {
                        return Err(ctx.err_at(name.span(), format!("item {:?} listed twice in one endowment", name.get_ref())));
                    }
                    if let Some(&other) = owner.get(&idx) {
                        return Err(ctx.err_at(name.span(), format!("item {:?} already owned by seller {other}", name.get_ref())));
                    }
                    owner.insert(idx, j);
                }
                bundle
            }
            None => {
                if j >= items.len() {
                    return Err(ctx.err_at(agent.span(), format!("seller {j} needs an explicit endowment: only {} items exist", items.len())));
                }
                if let Some(&other) = owner.get(&j) {
                    return Err(ctx.err_at(agent.span(), format!("default endowment of seller {j} collides with seller {other}")));
                }
                owner.insert(j, j);
                BTreeSet::from([j])
            }
        };
        endowment.push(bundle);
    }

    let constraint = parse_constraint(&ctx, constraint, buyers.len(), buyer_weights)?;
    let instance = Instance::new(buyers, sellers, items, endowment, constraint)
        .map_err(|e| ctx.err(e.to_string()))?;
    Ok(NamedInstance { name: raw.name, instance: Arc::new(instance) })
}

fn parse_distribution(
    ctx: &Ctx<'_>,
    decl: &RawAgent,
    decl_span: std::ops::Range<usize>,
    item_index: &BTreeMap<&str, usize>,
    role: &str,
    index: usize,
) -> Result<Distribution, ParseError> {
    let support: Vec<(Valuation, Rat)> = match (&decl.values, &decl.support) {
        (Some(values), None) => {
            let mut pairs = Vec::new();
            for (value, prob) in values.get_ref() {
                pairs.push((Valuation::Unit(ctx.rat(value)?), ctx.rat(prob)?));
            }
            check_probabilities(ctx, &pairs, values.span())?;
            pairs
        }
        (None, Some(atoms)) => {
            let mut pairs = Vec::new();
            for atom in atoms.get_ref() {
                let mut clauses = Vec::new();
                for clause in &atom.clauses {
                    let mut weights = BTreeMap::new();
                    for (item, weight) in clause.get_ref() {
                        let Some(&idx) = item_index.get(item.as_str()) else {
                            return Err(ctx.err_at(clause.span(), format!("unknown item {item:?} in a clause")));
                        };
                        weights.insert(idx, ctx.rat(weight)?);
                    }
                    clauses.push(weights);
                }
                let valuation = XosValuation::new(clauses)
                    .map_err(|e| ctx.err_at(atom.prob.span(), e.to_string()))?;
                pairs.push((Valuation::Xos(valuation), ctx.rat(&atom.prob)?));
            }
            check_probabilities(ctx, &pairs, atoms.span())?;
            pairs
        }
        (Some(_), Some(support)) => {
            return Err(ctx.err_at(support.span(), format!("{role} {index} declares both values and support")));
        }
        (None, None) => {
            return Err(ctx.err_at(decl_span, format!("{role} {index} needs either values or support")));
        }
    };
    Distribution::new(support).map_err(|e| ctx.err(format!("{role} {index}: {e}")))
}

/// Every probability must lie in (0, 1] and the support must sum to one;
/// violations point at the declaring array.
fn check_probabilities(
    ctx: &Ctx<'_>,
    pairs: &[(Valuation, Rat)],
    span: std::ops::Range<usize>,
) -> Result<(), ParseError> {
    let mut total = rat_int(0);
    for (_, prob) in pairs {
        if *prob <= rat_int(0) || *prob > rat_int(1) {
            return Err(ctx.err_at(span.clone(), format!("probability {} is outside (0, 1]", format_rat(prob))));
        }
        total += prob;
    }
    if total != rat_int(1) {
        return Err(ctx.err_at(span, format!("probabilities sum to {}, not 1", format_rat(&total))));
    }
    Ok(())
}

fn parse_constraint(
    ctx: &Ctx<'_>,
    raw: Option<&RawConstraint>,
    n_buyers: usize,
    buyer_weights: Vec<Rat>,
) -> Result<Constraint, ParseError> {
    let Some(raw) = raw else { return Ok(Constraint::Unconstrained) };
    let span = raw.kind.span();
    let reject_keys = |allowed: &[&str]| -> Result<(), ParseError> {
        let present: &[(&str, bool)] = &[
            ("rank", raw.rank.is_some()),
            ("blocks", raw.blocks.is_some()),
            ("capacities", raw.capacities.is_some()),
            ("edges", raw.edges.is_some()),
            ("independent", raw.independent.is_some()),
        ];
        for (key, here) in present {
            if *here && !allowed.contains(key) {
                return Err(ctx.err_at(span.clone(), format!("key {key:?} does not belong to a {:?} constraint", raw.kind.get_ref())));
            }
        }
        Ok(())
    };
    match raw.kind.get_ref().as_str() {
        "none" => {
            reject_keys(&[])?;
            Ok(Constraint::Unconstrained)
        }
        "knapsack" => {
            reject_keys(&[])?;
            Ok(Constraint::Knapsack { weights: buyer_weights })
        }
        "uniform" => {
            reject_keys(&["rank"])?;
            let Some(rank) = &raw.rank else {
                return Err(ctx.err_at(span, "uniform constraint needs a rank"));
            };
            let r = ctx.index(*rank.get_ref(), "rank", n_buyers + 1, &rank.span())?;
            let matroid = Matroid::uniform(n_buyers, r)
                .map_err(|e| ctx.err_at(rank.span(), e.to_string()))?;
            Ok(Constraint::Matroid(matroid))
        }
        "partition" => {
            reject_keys(&["blocks", "capacities"])?;
            let (Some(blocks), Some(capacities)) = (&raw.blocks, &raw.capacities) else {
                return Err(ctx.err_at(span, "partition constraint needs blocks and capacities"));
            };
            let blocks: Vec<Vec<usize>> = blocks
                .iter()
                .map(|block| {
                    block.iter().map(|&e| ctx.index(e, "buyer", n_buyers, &span)).collect()
                })
                .collect::<Result<_, _>>()?;
            if blocks.iter().map(Vec::len).sum::<usize>() != n_buyers {
                return Err(ctx.err_at(span.clone(), format!("blocks must cover all {n_buyers} buyers exactly once")));
            }
            let capacities: Vec<usize> = capacities
                .iter()
                .map(|&c| ctx.index(c, "capacity", usize::MAX, &span))
                .collect::<Result<_, _>>()?;
            let matroid = Matroid::partition(blocks, capacities)
                .map_err(|e| ctx.err_at(span, e.to_string()))?;
            Ok(Constraint::Matroid(matroid))
        }
        "graphic" => {
            reject_keys(&["edges"])?;
            let Some(edges) = &raw.edges else {
                return Err(ctx.err_at(span, "graphic constraint needs edges"));
            };
            if edges.len() != n_buyers {
                return Err(ctx.err_at(span.clone(), format!("graphic constraint has {} edges for {n_buyers} buyers; buyer i is edge i", edges.len())));
            }
            let edges: Vec<(usize, usize)> = edges
                .iter()
                .map(|&(a, b)| {
                    Ok((
                        ctx.index(a, "vertex", usize::MAX, &span)?,
                        ctx.index(b, "vertex", usize::MAX, &span)?,
                    ))
                })
                .collect::<Result<_, ParseError>>()?;
            Ok(Constraint::Matroid(Matroid::graphic(edges)))
        }
        "explicit" => {
            reject_keys(&["independent"])?;
            let Some(listed) = &raw.independent else {
                return Err(ctx.err_at(span, "explicit constraint needs the independent family"));
            };
            let mut family: BTreeSet<BTreeSet<usize>> = BTreeSet::from([BTreeSet::new()]);
            for set in listed {
                let set: BTreeSet<usize> = set
                    .iter()
                    .map(|&e| ctx.index(e, "buyer", n_buyers, &span))
                    .collect::<Result<_, _>>()?;
                family.insert(set);
            }
            let matroid = Matroid::explicit(n_buyers, family)
                .map_err(|e| ctx.err_at(span, e.to_string()))?;
            Ok(Constraint::Matroid(matroid))
        }
        other => Err(ctx.err_at(span, format!("unknown constraint kind {other:?}"))),
    }
}

// ---------------------------------------------------------------------------
// Canonical document (serialization side)
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct DocOut {
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    items: Vec<String>,
    buyers: Vec<AgentOut>,
    sellers: Vec<AgentOut>,
    constraint: ConstraintOut,
}

#[derive(Serialize)]
struct AgentOut {
    #[serde(skip_serializing_if = "Option::is_none")]
    values: Option<Vec<(String, String)>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    support: Option<Vec<AtomOut>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    weight: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    endowment: Option<Vec<String>>,
}

#[derive(Serialize)]
struct AtomOut {
    prob: String,
    clauses: Vec<BTreeMap<String, String>>,
}

#[derive(Serialize)]
struct ConstraintOut {
    kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    rank: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    blocks: Option<Vec<Vec<usize>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    capacities: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    edges: Option<Vec<(usize, usize)>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    independent: Option<Vec<Vec<usize>>>,
}

fn agent_out(
    dist: &Distribution,
    items: &[String],
    role: Role,
    index: usize,
) -> Result<(Option<Vec<(String, String)>>, Option<Vec<AtomOut>>), WriteError> {
    let scalar = dist.support().iter().all(|(v, _)| matches!(v, Valuation::Unit(_)));
    let bundle = dist.support().iter().all(|(v, _)| matches!(v, Valuation::Xos(_)));
    if scalar {
        let values = dist
            .support()
            .iter()
            .map(|(v, p)| (format_rat(v.unit().expect("scalar support")), format_rat(p)))
            .collect();
        return Ok((Some(values), None));
    }
    if !bundle {
        let role = match role {
            Role::Buyer => "buyer",
            Role::Seller => "seller",
        };
        return Err(WriteError::MixedSupport { role, index });
    }
    let atoms = dist
        .support()
        .iter()
        .map(|(v, p)| {
            let Valuation::Xos(xos) = v else { unreachable!("checked above") };
            AtomOut {
                prob: format_rat(p),
                clauses: xos
                    .clauses()
                    .iter()
                    .map(|clause| {
                        clause
                            .iter()
                            .map(|(&item, w)| (items[item].clone(), format_rat(w)))
                            .collect()
                    })
                    .collect(),
            }
        })
        .collect();
    Ok((None, Some(atoms)))
}

/// Render a market in canonical form: explicit items and endowments, sorted
/// scalar supports, and the constraint block always present.
pub fn write_str(name: Option<&str>, instance: &Instance) -> Result<String, WriteError> {
    let items = instance.items();
    let (constraint, weights) = match instance.constraint() {
        Constraint::Unconstrained => (
            ConstraintOut { kind: "none", rank: None, blocks: None, capacities: None, edges: None, independent: None },
            None,
        ),
        Constraint::Knapsack { weights } => (
            ConstraintOut { kind: "knapsack", rank: None, blocks: None, capacities: None, edges: None, independent: None },
            Some(weights),
        ),
        Constraint::Matroid(matroid) => {
            let out = match matroid {
                Matroid::Uniform { rank, .. } => ConstraintOut {
                    kind: "uniform", rank: Some(*rank), blocks: None, capacities: None, edges: None, independent: None,
                },
                Matroid::Partition { blocks, capacities } => ConstraintOut {
                    kind: "partition", rank: None, blocks: Some(blocks.clone()), capacities: Some(capacities.clone()), edges: None, independent: None,
                },
                Matroid::Graphic { edges } => ConstraintOut {
                    kind: "graphic", rank: None, blocks: None, capacities: None, edges: Some(edges.clone()), independent: None,
                },
                Matroid::Explicit { independent, .. } => ConstraintOut {
                    kind: "explicit", rank: None, blocks: None, capacities: None, edges: None,
                    independent: Some(
                        independent.iter().map(|set| set.iter().copied().collect()).collect(),
                    ),
                },
            };
            (out, None)
        }
    };

    let buyers = instance
        .buyers()
        .iter()
        .enumerate()
        .map(|(i, dist)| {
            let (values, support) = agent_out(dist, items, Role::Buyer, i)?;
            Ok(AgentOut {
                values,
                support,
                weight: weights.map(|w| format_rat(&w[i])),
                endowment: None,
            })
        })
        .collect::<Result<Vec<_>, WriteError>>()?;
    let sellers = instance
        .sellers()
        .iter()
        .enumerate()
        .map(|(j, dist)| {
            let (values, support) = agent_out(dist, items, Role::Seller, j)?;
            Ok(AgentOut {
                values,
                support,
                weight: None,
                endowment: Some(
                    instance.endowment(j).iter().map(|&i| items[i].clone()).collect(),
                ),
            })
        })
        .collect::<Result<Vec<_>, WriteError>>()?;

    let doc = DocOut {
        name: name.map(str::to_owned),
        items: items.to_vec(),
        buyers,
        sellers,
        constraint,
    };
    Ok(toml::to_string(&doc).expect("document model serializes"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use double_auction::corpus;

    fn parse(source: &str) -> NamedInstance {
        parse_str(source).expect("fixture parses")
    }

    fn parse_err(source: &str) -> ParseError {
        parse_str(source).expect_err("fixture must be rejected")
    }

    #[test]
    fn parses_a_bilateral_market() {
        let loaded = parse(
            r#"
name = "gap"
[[buyers]]
values = [["1", "1/2"], ["3", "1/2"]]
[[sellers]]
values = [["0", "1"]]
[constraint]
kind = "none"
"#,
        );
        assert_eq!(loaded.name.as_deref(), Some("gap"));
        assert_eq!(loaded.instance.n_buyers(), 1);
        assert_eq!(loaded.instance.items(), &["s0".to_string()]);
        assert_eq!(loaded.instance.constraint(), &Constraint::Unconstrained);
    }

    #[test]
    fn bad_probability_sum_is_positioned() {
        let err = parse_err(
            "[[buyers]]\nvalues = [[\"1\", \"1/2\"], [\"3\", \"1/3\"]]\n[[sellers]]\nvalues = [[\"0\", \"1\"]]\n",
        );
        assert!(err.message.contains("sum to 5/6"), "{err}");
        assert_eq!(err.position, Some((2, 10)));
    }

    #[test]
    fn malformed_rational_is_positioned() {
        let err = parse_err(
            "[[buyers]]\nvalues = [[\"one\", \"1\"]]\n[[sellers]]\nvalues = [[\"0\", \"1\"]]\n",
        );
        assert_eq!(err.position, Some((2, 12)));
    }

    #[test]
    fn toml_syntax_errors_are_positioned() {
        let err = parse_err("[[buyers]\nvalues = []\n");
        assert!(err.position.is_some());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_err("[[buyers]]\nvalues = [[\"1\", \"1\"]]\nbid = 3\n[[sellers]]\nvalues = [[\"0\", \"1\"]]\n");
        assert!(err.message.contains("bid"), "{err}");
    }

    #[test]
    fn weight_rules_follow_the_constraint() {
        let knapsack = "[[buyers]]\nvalues = [[\"4\", \"1\"]]\nweight = \"1/2\"\n[[buyers]]\nvalues = [[\"2\", \"1\"]]\nweight = \"1/3\"\n[[sellers]]\nvalues = [[\"0\", \"1\"]]\n[[sellers]]\nvalues = [[\"0\", \"1\"]]\n[constraint]\nkind = \"knapsack\"\n";
        let loaded = parse(knapsack);
        assert_eq!(
            loaded.instance.constraint(),
            &Constraint::Knapsack { weights: vec![Rat::new(1.into(), 2.into()), Rat::new(1.into(), 3.into())] }
        );

        let missing = parse_err("[[buyers]]\nvalues = [[\"4\", \"1\"]]\n[[sellers]]\nvalues = [[\"0\", \"1\"]]\n[constraint]\nkind = \"knapsack\"\n");
        assert!(missing.message.contains("needs a weight"), "{missing}");

        let stray = parse_err("[[buyers]]\nvalues = [[\"4\", \"1\"]]\nweight = \"1/2\"\n[[sellers]]\nvalues = [[\"0\", \"1\"]]\n");
        assert!(stray.message.contains("not a knapsack"), "{stray}");
        assert_eq!(stray.position, Some((3, 10)));
    }

    #[test]
    fn matroid_constraints_parse() {
        let uniform = parse("[[buyers]]\nvalues = [[\"1\", \"1\"]]\n[[buyers]]\nvalues = [[\"2\", \"1\"]]\n[[sellers]]\nvalues = [[\"0\", \"1\"]]\n[constraint]\nkind = \"uniform\"\nrank = 1\n");
        assert_eq!(
            uniform.instance.constraint(),
            &Constraint::Matroid(Matroid::uniform(2, 1).unwrap())
        );

        let graphic = parse("[[buyers]]\nvalues = [[\"1\", \"1\"]]\n[[buyers]]\nvalues = [[\"2\", \"1\"]]\n[[sellers]]\nvalues = [[\"0\", \"1\"]]\n[constraint]\nkind = \"graphic\"\nedges = [[0, 1], [1, 0]]\n");
        assert_eq!(
            graphic.instance.constraint(),
            &Constraint::Matroid(Matroid::graphic(vec![(0, 1), (1, 0)]))
        );

        let wrong = parse_err("[[buyers]]\nvalues = [[\"1\", \"1\"]]\n[[sellers]]\nvalues = [[\"0\", \"1\"]]\n[constraint]\nkind = \"uniform\"\nrank = 4\n");
        assert!(wrong.message.contains("outside"), "{wrong}");
    }

    #[test]
    fn xos_support_round_trips_by_name() {
        let source = r#"
items = ["left", "right"]
[[buyers]]
[[buyers.support]]
prob = "1/2"
clauses = [{ left = "4", right = "1" }, { right = "3" }]
[[buyers.support]]
prob = "1/2"
clauses = [{ left = "2" }]
[[sellers]]
values = [["0", "1"]]
endowment = ["left"]
[[sellers]]
values = [["0", "1"]]
endowment = ["right"]
"#;
        let loaded = parse(source);
        let rendered = write_str(None, &loaded.instance).unwrap();
        let again = parse(&rendered);
        assert_eq!(again.instance, loaded.instance);
    }

    #[test]
    fn endowment_collisions_are_positioned() {
        let err = parse_err(
            "items = [\"x\"]\n[[buyers]]\nvalues = [[\"1\", \"1\"]]\n[[sellers]]\nvalues = [[\"0\", \"1\"]]\nendowment = [\"x\"]\n[[sellers]]\nvalues = [[\"0\", \"1\"]]\nendowment = [\"x\"]\n",
        );
        assert!(err.message.contains("already owned"), "{err}");
        assert_eq!(err.position, Some((9, 14)));
    }

    #[test]
    fn corpus_round_trips_exactly() {
        let mut entries = corpus::bilateral();
        entries.extend(corpus::matroid());
        entries.extend(corpus::combinatorial());
        entries.extend(corpus::knapsack_restricted());
        entries.extend(corpus::knapsack_general());
        entries.push(corpus::tight_instance(&Rat::new(1.into(), 10.into())));
        for entry in &entries {
            let rendered = write_str(Some(&entry.name), &entry.instance).unwrap();
            let loaded = parse_str(&rendered)
                .unwrap_or_else(|e| panic!("{}: {e}\n{rendered}", entry.name));
            assert_eq!(loaded.name.as_deref(), Some(entry.name.as_str()), "{}", entry.name);
            assert_eq!(loaded.instance, entry.instance, "{}", entry.name);
            // Canonical form is a fixed point of parse-then-serialize.
            let again = write_str(loaded.name.as_deref(), &loaded.instance).unwrap();
            assert_eq!(again, rendered, "{}", entry.name);
        }
    }
}
