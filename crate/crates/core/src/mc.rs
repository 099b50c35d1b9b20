//! A small explicit-state model checker for guarded-command models.
//!
//! A model is a set of named rules, each expanded into finitely many
//! instances (guard plus effect over a state type). The explorer runs
//! breadth-first search from the initial states with an injective byte
//! encoding of states as the visited-set key, checks invariants on every
//! reachable state, optionally flags deadlocks, and reconstructs a
//! rule-annotated path when something fails. Found paths are replayed from
//! the initial state as a self-check before being reported.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

/// Injective encoding of a state into bytes, used as the visited-set key.
/// Distinct states must encode to distinct byte strings.
pub trait StateCodec {
    fn encode(&self) -> Vec<u8>;
}

type GuardFn<S> = Box<dyn Fn(&S) -> bool + Send + Sync>;
type EffectFn<S> = Box<dyn Fn(&S) -> S + Send + Sync>;
type LabelFn<S, L> = Box<dyn Fn(&S) -> L + Send + Sync>;

/// One concrete instantiation of a rule's parameters.
pub struct RuleInstance<S, L> {
    pub binding: String,
    pub guard: GuardFn<S>,
    pub effect: EffectFn<S>,
    pub label: Option<LabelFn<S, L>>,
}

pub struct Rule<S, L> {
    pub name: String,
    pub instances: Vec<RuleInstance<S, L>>,
}

pub struct Invariant<S> {
    pub name: String,
    pub check: Box<dyn Fn(&S) -> bool + Send + Sync>,
}

pub struct Model<S, L> {
    pub name: String,
    pub initials: Vec<S>,
    pub rules: Vec<Rule<S, L>>,
    pub invariants: Vec<Invariant<S>>,
    pub dump_state: Box<dyn Fn(&S) -> String + Send + Sync>,
}

impl<S, L> Model<S, L> {
    pub fn enabled(&self, s: &S) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (ri, rule) in self.rules.iter().enumerate() {
            for (ii, inst) in rule.instances.iter().enumerate() {
                if (inst.guard)(s) {
                    out.push((ri, ii));
                }
            }
        }
        out
    }
}

/// Exploration limits and switches.
pub struct ExploreOptions<S> {
    /// Maximum number of distinct states to visit.
    pub max_states: usize,
    /// Maximum BFS depth (path length in rules); `usize::MAX` for unbounded.
    pub max_depth: usize,
    /// Treat states with no enabled rule as violations.
    pub check_deadlock: bool,
    /// Keep every reachable state in the report.
    pub collect_states: bool,
    /// Symmetry reduction: states are canonicalized before deduplication.
    pub canonicalize: Option<Box<dyn Fn(&S) -> S + Send + Sync>>,
    /// Number of worker threads for frontier expansion (1 = sequential).
    pub workers: usize,
}

impl<S> Default for ExploreOptions<S> {
    fn default() -> Self {
        ExploreOptions {
            max_states: 10_000_000,
            max_depth: usize::MAX,
            check_deadlock: true,
            collect_states: false,
            canonicalize: None,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    InvariantFailed(String),
    Deadlock,
}

/// One step of a counterexample path: rule name, instance binding, and the
/// dump of the state reached after the step.
#[derive(Debug, Clone)]
pub struct PathStep {
    pub rule: String,
    pub binding: String,
    pub state_dump: String,
}

#[derive(Debug, Clone)]
pub struct Violation {
    pub kind: ViolationKind,
    pub initial_dump: String,
    pub path: Vec<PathStep>,
    pub final_dump: String,
}

#[derive(Debug, Default, Clone, Copy)]
pub struct ExploreStats {
    pub states: u64,
    pub transitions: u64,
    pub depth: usize,
}

pub struct ExplorationReport<S> {
    pub stats: ExploreStats,
    pub violation: Option<Violation>,
    pub collected: Vec<S>,
}

impl<S> ExplorationReport<S> {
    pub fn ok(&self) -> bool {
        self.violation.is_none()
    }
}

#[derive(Debug, Error)]
pub enum ExploreError {
    #[error("state budget of {budget} exhausted: {stats:?}")]
    Budget { budget: usize, stats: ExploreStats },
    #[error("path replay self-check failed after step {step}: {reason}")]
    ReplayMismatch { step: usize, reason: String },
}

struct Arena<S> {
    states: Vec<S>,
    // parent index, rule index, instance index
    parents: Vec<Option<(usize, usize, usize)>>,
    depths: Vec<usize>,
}

/// Breadth-first exploration. Returns the report, or a budget error carrying
/// the statistics gathered before the budget ran out.
pub fn explore<S, L>(
    model: &Model<S, L>,
    opts: &ExploreOptions<S>,
) -> Result<ExplorationReport<S>, ExploreError>
where
    S: StateCodec + Clone + Send + Sync,
    L: Send + Sync,
{
    let canon = |s: &S| -> S {
        match &opts.canonicalize {
            Some(f) => f(s),
            None => s.clone(),
        }
    };
    let mut arena = Arena {
        states: Vec::new(),
        parents: Vec::new(),
        depths: Vec::new(),
    };
    let mut visited: HashMap<Vec<u8>, usize> = HashMap::new();
    let mut frontier: Vec<usize> = Vec::new();
    let mut stats = ExploreStats::default();

    for init in &model.initials {
        let c = canon(init);
        let key = c.encode();
        if !visited.contains_key(&key) {
            let idx = arena.states.len();
            visited.insert(key, idx);
            arena.states.push(c);
            arena.parents.push(None);
            arena.depths.push(0);
            frontier.push(idx);
        }
    }
    stats.states = arena.states.len() as u64;

    let check_state = |idx: usize, arena: &Arena<S>| -> Option<ViolationKind> {
        let s = &arena.states[idx];
        for inv in &model.invariants {
            if !(inv.check)(s) {
                return Some(ViolationKind::InvariantFailed(inv.name.clone()));
            }
        }
        if opts.check_deadlock && model.enabled(s).is_empty() {
            return Some(ViolationKind::Deadlock);
        }
        None
    };

    for &idx in &frontier {
        if let Some(kind) = check_state(idx, &arena) {
            let violation = build_violation(model, &arena, idx, kind);
            replay_check(model, opts, &violation, &arena, idx)?;
            return Ok(ExplorationReport {
                stats,
                violation: Some(violation),
                collected: collect(&arena, opts),
            });
        }
    }

    let mut depth = 0usize;
    while !frontier.is_empty() && depth < opts.max_depth {
        depth += 1;
        // Expand the whole level, then merge: deterministic regardless of
        // worker count.
        let batches: Vec<Vec<(usize, usize, usize, S)>> = {
            let expand = |&idx: &usize| -> Vec<(usize, usize, usize, S)> {
                let s = &arena.states[idx];
                let mut succs = Vec::new();
                for (ri, ii) in model.enabled(s) {
                    let next = (model.rules[ri].instances[ii].effect)(s);
                    succs.push((idx, ri, ii, canon(&next)));
                }
                succs
            };
            if opts.workers > 1 {
                use rayon::prelude::*;
                frontier.par_iter().map(expand).collect()
            } else {
                frontier.iter().map(expand).collect()
            }
        };
        let mut next_frontier = Vec::new();
        for batch in batches {
            for (parent, ri, ii, succ) in batch {
                stats.transitions += 1;
                let key = succ.encode();
                if visited.contains_key(&key) {
                    continue;
                }
                let idx = arena.states.len();
                visited.insert(key, idx);
                arena.states.push(succ);
                arena.parents.push(Some((parent, ri, ii)));
                arena.depths.push(depth);
                next_frontier.push(idx);
                stats.states += 1;
                stats.depth = depth;
                if let Some(kind) = check_state(idx, &arena) {
                    let violation = build_violation(model, &arena, idx, kind);
                    replay_check(model, opts, &violation, &arena, idx)?;
                    return Ok(ExplorationReport {
                        stats,
                        violation: Some(violation),
                        collected: collect(&arena, opts),
                    });
                }
                if arena.states.len() > opts.max_states {
                    return Err(ExploreError::Budget {
                        budget: opts.max_states,
                        stats,
                    });
                }
            }
        }
        frontier = next_frontier;
    }

    Ok(ExplorationReport {
        stats,
        violation: None,
        collected: collect(&arena, opts),
    })
}

fn collect<S: Clone>(arena: &Arena<S>, opts: &ExploreOptions<S>) -> Vec<S> {
    if opts.collect_states {
        arena.states.clone()
    } else {
        Vec::new()
    }
}

fn path_to<S>(arena: &Arena<S>, idx: usize) -> (usize, Vec<(usize, usize, usize)>) {
    let mut steps = Vec::new();
    let mut cur = idx;
    while let Some((parent, ri, ii)) = arena.parents[cur] {
        steps.push((cur, ri, ii));
        cur = parent;
    }
    steps.reverse();
    (cur, steps)
}

fn build_violation<S, L>(
    model: &Model<S, L>,
    arena: &Arena<S>,
    idx: usize,
    kind: ViolationKind,
) -> Violation {
    let (root, steps) = path_to(arena, idx);
    let path = steps
        .iter()
        .map(|&(state, ri, ii)| PathStep {
            rule: model.rules[ri].name.clone(),
            binding: model.rules[ri].instances[ii].binding.clone(),
            state_dump: (model.dump_state)(&arena.states[state]),
        })
        .collect();
    Violation {
        kind,
        initial_dump: (model.dump_state)(&arena.states[root]),
        path,
        final_dump: (model.dump_state)(&arena.states[idx]),
    }
}

/// Replays a counterexample path from its initial state, re-checking each
/// guard and that the reached state (after canonicalization) matches what
/// the search recorded.
fn replay_check<S, L>(
    model: &Model<S, L>,
    opts: &ExploreOptions<S>,
    _violation: &Violation,
    arena: &Arena<S>,
    idx: usize,
) -> Result<(), ExploreError>
where
    S: StateCodec + Clone,
{
    let (root, steps) = path_to(arena, idx);
    let mut cur = arena.states[root].clone();
    for (step_no, &(state, ri, ii)) in steps.iter().enumerate() {
        let inst = &model.rules[ri].instances[ii];
        if !(inst.guard)(&cur) {
            return Err(ExploreError::ReplayMismatch {
                step: step_no,
                reason: format!(
                    "guard of {} [{}] not enabled on replay",
                    model.rules[ri].name, inst.binding
                ),
            });
        }
        let mut next = (inst.effect)(&cur);
        if let Some(f) = &opts.canonicalize {
            next = f(&next);
        }
        if next.encode() != arena.states[state].encode() {
            return Err(ExploreError::ReplayMismatch {
                step: step_no,
                reason: format!(
                    "state after {} [{}] differs from recorded state",
                    model.rules[ri].name, inst.binding
                ),
            });
        }
        cur = next;
    }
    Ok(())
}

/// Renders a violation as a counterexample file: the failure kind, the
/// initial state, and each step with the rule, binding and resulting state.
pub fn format_counterexample(model_name: &str, v: &Violation) -> String {
    let mut out = String::new();
    let kind = match &v.kind {
        ViolationKind::InvariantFailed(name) => format!("invariant {name} failed"),
        ViolationKind::Deadlock => "deadlock".to_string(),
    };
    writeln!(out, "model: {model_name}").unwrap();
    writeln!(out, "violation: {kind}").unwrap();
    writeln!(out, "steps: {}", v.path.len()).unwrap();
    writeln!(out, "-- initial state --").unwrap();
    writeln!(out, "{}", v.initial_dump.trim_end()).unwrap();
    for (i, step) in v.path.iter().enumerate() {
        writeln!(out, "-- step {}: {} [{}] --", i + 1, step.rule, step.binding).unwrap();
        writeln!(out, "{}", step.state_dump.trim_end()).unwrap();
    }
    out
}

/// Minimizes a state over a set of index permutations, keeping the one with
/// the smallest encoding. `apply` must map a state through one permutation.
pub fn min_over_permutations<S, F>(s: &S, n: usize, apply: F) -> S
where
    S: StateCodec + Clone,
    F: Fn(&S, &[usize]) -> S,
{
    let mut best = s.clone();
    let mut best_key = best.encode();
    let mut perm: Vec<usize> = (0..n).collect();
    permute(&mut perm, 0, &mut |p| {
        let candidate = apply(s, p);
        let key = candidate.encode();
        if key < best_key {
            best_key = key;
            best = candidate;
        }
    });
    best
}

fn permute(perm: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == perm.len() {
        visit(perm);
        return;
    }
    for i in k..perm.len() {
        perm.swap(k, i);
        permute(perm, k + 1, visit);
        perm.swap(k, i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, PartialEq, Eq)]
    struct Counter(u32);

    impl StateCodec for Counter {
        fn encode(&self) -> Vec<u8> {
            self.0.to_be_bytes().to_vec()
        }
    }

    fn counter_model(modulus: u32) -> Model<Counter, ()> {
        Model {
            name: format!("counter mod {modulus}"),
            initials: vec![Counter(0)],
            rules: vec![Rule {
                name: "inc".to_string(),
                instances: vec![RuleInstance {
                    binding: String::new(),
                    guard: Box::new(|_| true),
                    effect: Box::new(move |s: &Counter| Counter((s.0 + 1) % modulus)),
                    label: None,
                }],
            }],
            invariants: Vec::new(),
            dump_state: Box::new(|s| format!("n = {}", s.0)),
        }
    }

    #[test]
    fn counter_reaches_exactly_modulus_states() {
        let model = counter_model(7);
        let report = explore(&model, &ExploreOptions::default()).unwrap();
        assert!(report.ok());
        assert_eq!(report.stats.states, 7);
    }

    #[test]
    fn invariant_violation_has_minimal_path() {
        let mut model = counter_model(100);
        model.invariants.push(Invariant {
            name: "below-five".to_string(),
            check: Box::new(|s: &Counter| s.0 < 5),
        });
        let report = explore(&model, &ExploreOptions::default()).unwrap();
        let v = report.violation.expect("counter reaches 5");
        assert_eq!(v.kind, ViolationKind::InvariantFailed("below-five".into()));
        // BFS finds the shortest path: five increments.
        assert_eq!(v.path.len(), 5);
        assert_eq!(v.final_dump, "n = 5");
    }

    #[test]
    fn deadlock_detected() {
        let mut model = counter_model(10);
        // Guard closes at 3: no rule enabled, so 3 deadlocks.
        model.rules[0].instances[0].guard = Box::new(|s: &Counter| s.0 < 3);
        let report = explore(&model, &ExploreOptions::default()).unwrap();
        let v = report.violation.expect("deadlock at 3");
        assert_eq!(v.kind, ViolationKind::Deadlock);
        assert_eq!(v.path.len(), 3);
    }

    #[test]
    fn budget_error_carries_partial_stats() {
        let model = counter_model(1000);
        let opts = ExploreOptions {
            max_states: 10,
            check_deadlock: false,
            ..Default::default()
        };
        match explore(&model, &opts) {
            Err(ExploreError::Budget { budget, stats }) => {
                assert_eq!(budget, 10);
                assert!(stats.states >= 10);
            }
            Err(other) => panic!("expected budget error, got {other}"),
            Ok(_) => panic!("expected budget error, got a report"),
        }
    }

    #[derive(Debug, Clone)]
    struct Pair([u32; 2]);

    impl StateCodec for Pair {
        fn encode(&self) -> Vec<u8> {
            let mut v = self.0[0].to_be_bytes().to_vec();
            v.extend(self.0[1].to_be_bytes());
            v
        }
    }

    #[test]
    fn symmetry_reduction_halves_asymmetric_pairs() {
        // Two interchangeable slots, each independently settable to 0..3.
        let mut instances = Vec::new();
        for slot in 0..2usize {
            for val in 0..3u32 {
                instances.push(RuleInstance {
                    binding: format!("slot={slot} val={val}"),
                    guard: Box::new(|_: &Pair| true),
                    effect: Box::new(move |s: &Pair| {
                        let mut n = s.clone();
                        n.0[slot] = val;
                        n
                    }),
                    label: None,
                });
            }
        }
        let model: Model<Pair, ()> = Model {
            name: "pair".to_string(),
            initials: vec![Pair([0, 0])],
            rules: vec![Rule {
                name: "set".to_string(),
                instances,
            }],
            invariants: Vec::new(),
            dump_state: Box::new(|s| format!("{:?}", s.0)),
        };
        let plain = explore(&model, &ExploreOptions::default()).unwrap();
        assert_eq!(plain.stats.states, 9);
        let opts = ExploreOptions {
            canonicalize: Some(Box::new(|s: &Pair| {
                min_over_permutations(s, 2, |s, p| Pair([s.0[p[0]], s.0[p[1]]]))
            })),
            ..Default::default()
        };
        let reduced = explore(&model, &opts).unwrap();
        // Unordered pairs over 3 values: C(3,2) + 3 = 6.
        assert_eq!(reduced.stats.states, 6);
    }

    #[test]
    fn replay_self_check_accepts_real_paths() {
        let mut model = counter_model(50);
        model.invariants.push(Invariant {
            name: "bound".to_string(),
            check: Box::new(|s: &Counter| s.0 != 20),
        });
        let report = explore(&model, &ExploreOptions::default()).unwrap();
        assert!(report.violation.is_some());
    }

    #[test]
    fn counterexample_format_mentions_rule_and_state() {
        let mut model = counter_model(10);
        model.invariants.push(Invariant {
            name: "small".to_string(),
            check: Box::new(|s: &Counter| s.0 < 2),
        });
        let report = explore(&model, &ExploreOptions::default()).unwrap();
        let text = format_counterexample(&model.name, &report.violation.unwrap());
        assert!(text.contains("invariant small failed"));
        assert!(text.contains("step 2: inc"));
        assert!(text.contains("n = 2"));
    }
}
