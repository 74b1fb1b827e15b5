//! Arrival-order and matching strategies.
//!
//! The order-sensitive mechanisms expose their discretion — which agent
//! arrives next, which pending seller is matched to an arriving buyer — as
//! explicit choice points. An [`Adversary`] resolves each choice given the
//! candidate agents (always presented in ascending id order) and the exact
//! one-step welfare change each candidate would cause. Choice points with a
//! single candidate are resolved by the mechanism itself and never reach
//! the adversary, which keeps enumerable strategy spaces small.

use crate::market::AgentId;
use crate::rational::Rat;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::fmt;

/// What kind of discretion a choice point exposes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ChoiceKind {
    /// Which pending seller is processed next in a seller phase.
    SellerArrival,
    /// Which pending buyer arrives next.
    BuyerArrival,
    /// Which pending seller an arriving buyer is matched with.
    SellerMatch,
}

impl fmt::Display for ChoiceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChoiceKind::SellerArrival => write!(f, "seller-arrival"),
            ChoiceKind::BuyerArrival => write!(f, "buyer-arrival"),
            ChoiceKind::SellerMatch => write!(f, "seller-match"),
        }
    }
}

/// A choice point presented to an adversary.
pub struct ChoiceContext<'a> {
    pub kind: ChoiceKind,
    /// Candidates in ascending agent-id order; never empty.
    pub options: &'a [AgentId],
    /// Exact welfare the mechanism would add in the single step processing
    /// each candidate (same length as `options`).
    pub welfare_added: &'a [Rat],
}

/// A strategy resolving every choice point of a run. Implementations must
/// be deterministic functions of the observed contexts (and any internal
/// seed) so that identical runs reproduce identical outcomes.
pub trait Adversary {
    /// Returns the index into `ctx.options` of the chosen candidate.
    fn choose(&mut self, ctx: &ChoiceContext<'_>) -> usize;
}

/// Always picks the lowest-id candidate: the deterministic baseline
/// order, resolving every "select arbitrarily" step by lowest index.
#[derive(Clone, Copy, Debug, Default)]
pub struct CanonicalOrder;

impl Adversary for CanonicalOrder {
    fn choose(&mut self, _ctx: &ChoiceContext<'_>) -> usize {
        0
    }
}

/// Follows an explicit agent sequence: at every choice point the candidate
/// appearing earliest in the sequence is taken. Construction validates the
/// sequence against the instance so a run can never stall.
#[derive(Clone, Debug)]
pub struct FixedOrder {
    position: BTreeMap<AgentId, usize>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum OrderError {
    #[error("agent {0} listed twice in arrival order")]
    Duplicate(AgentId),
    #[error("arrival order omits agent {0}")]
    Missing(AgentId),
}

impl FixedOrder {
    /// `sequence` must list every agent of the instance exactly once;
    /// phase structure is still enforced by the mechanisms themselves, so
    /// the relative order of buyers among buyers (and sellers among
    /// sellers, where a mechanism consults it) is what matters.
    pub fn new(
        sequence: &[AgentId],
        all_agents: impl IntoIterator<Item = AgentId>,
    ) -> Result<Self, OrderError> {
        let mut position = BTreeMap::new();
        for (at, &agent) in sequence.iter().enumerate() {
            if position.insert(agent, at).is_some() {
                return Err(OrderError::Duplicate(agent));
            }
        }
        for agent in all_agents {
            if !position.contains_key(&agent) {
                return Err(OrderError::Missing(agent));
            }
        }
        Ok(FixedOrder { position })
    }
}

impl Adversary for FixedOrder {
    fn choose(&mut self, ctx: &ChoiceContext<'_>) -> usize {
        ctx.options
            .iter()
            .enumerate()
            .min_by_key(|(_, agent)| self.position.get(agent).copied().unwrap_or(usize::MAX))
            .map(|(at, _)| at)
            .unwrap_or(0)
    }
}

/// Uniformly random choices from a seeded generator; reproducible per seed.
#[derive(Clone, Debug)]
pub struct SeededRandom {
    rng: ChaCha8Rng,
}

impl SeededRandom {
    pub fn new(seed: u64) -> Self {
        use rand::SeedableRng;
        SeededRandom { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Adversary for SeededRandom {
    fn choose(&mut self, ctx: &ChoiceContext<'_>) -> usize {
        self.rng.gen_range(0..ctx.options.len())
    }
}

/// Adaptive spoiler heuristic: always takes the candidate adding the least
/// welfare in the next step (ties to the lowest id).
#[derive(Clone, Copy, Debug, Default)]
pub struct GreedyAdversary;

impl Adversary for GreedyAdversary {
    fn choose(&mut self, ctx: &ChoiceContext<'_>) -> usize {
        let mut best = 0;
        for at in 1..ctx.welfare_added.len() {
            if ctx.welfare_added[at] < ctx.welfare_added[best] {
                best = at;
            }
        }
        best
    }
}

/// A deterministic positional strategy: one option-index script per choice
/// kind, consumed in visit order. Indices beyond a script's end (or beyond
/// the current arity) fall back to 0 / the last candidate, so any script is
/// valid on any profile. Used by the exhaustive strategy enumeration.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct StrategyScript {
    pub per_kind: BTreeMap<ChoiceKind, Vec<usize>>,
}

impl StrategyScript {
    pub fn empty() -> Self {
        StrategyScript::default()
    }

    fn entry(&self, kind: ChoiceKind, depth: usize) -> usize {
        self.per_kind.get(&kind).and_then(|s| s.get(depth)).copied().unwrap_or(0)
    }

    /// Sets one position, padding with the default choice; trailing
    /// defaults are trimmed so equal behaviors share one representation.
    pub fn with_choice(&self, kind: ChoiceKind, depth: usize, option: usize) -> Self {
        let mut next = self.clone();
        let script = next.per_kind.entry(kind).or_default();
        if script.len() <= depth {
            script.resize(depth + 1, 0);
        }
        script[depth] = option;
        while script.last() == Some(&0) {
            script.pop();
        }
        if script.is_empty() {
            next.per_kind.remove(&kind);
        }
        next
    }

    pub fn is_canonical(&self) -> bool {
        self.per_kind.is_empty()
    }
}

impl fmt::Display for StrategyScript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.per_kind.is_empty() {
            return write!(f, "canonical");
        }
        let mut first = true;
        for (kind, script) in &self.per_kind {
            if !first {
                write!(f, " ")?;
            }
            first = false;
            write!(f, "{kind}:")?;
            for (at, choice) in script.iter().enumerate() {
                if at > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{choice}")?;
            }
        }
        Ok(())
    }
}

/// One visited choice point, as recorded by [`ScriptedAdversary`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VisitedChoice {
    pub kind: ChoiceKind,
    /// Per-kind visit depth of this choice.
    pub depth: usize,
    pub arity: usize,
    pub taken: usize,
}

/// Plays a [`StrategyScript`] and records every visited choice point, which
/// lets a driver both enumerate sibling strategies and canonicalize the
/// strategy actually played (clamped indices collapse to their effect).
#[derive(Clone, Debug)]
pub struct ScriptedAdversary {
    script: StrategyScript,
    depth: BTreeMap<ChoiceKind, usize>,
    pub visited: Vec<VisitedChoice>,
}

impl ScriptedAdversary {
    pub fn new(script: StrategyScript) -> Self {
        ScriptedAdversary { script, depth: BTreeMap::new(), visited: Vec::new() }
    }

    /// The behaviorally equivalent canonical script of the run just played
    /// (every taken index recorded explicitly, trailing defaults trimmed).
    pub fn played_script(&self) -> StrategyScript {
        let mut script = StrategyScript::empty();
        for visit in &self.visited {
            script = script.with_choice(visit.kind, visit.depth, visit.taken);
        }
        script
    }
}

impl Adversary for ScriptedAdversary {
    fn choose(&mut self, ctx: &ChoiceContext<'_>) -> usize {
        let depth = self.depth.entry(ctx.kind).or_insert(0);
        let want = self.script.entry(ctx.kind, *depth);
        let taken = want.min(ctx.options.len() - 1);
        self.visited.push(VisitedChoice {
            kind: ctx.kind,
            depth: *depth,
            arity: ctx.options.len(),
            taken,
        });
        *depth += 1;
        taken
    }
}
