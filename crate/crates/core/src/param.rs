//! Parameterized verification: the concrete N-processor protocol model is
//! augmented with one stateless abstract cache (`Node::Other`) that
//! over-approximates any number of further processors by nondeterministically
//! generating every message they could send. Spurious behaviors are pruned by
//! *restrictions* on the abstract send rules, each justified by a
//! *non-interference lemma* — an invariant of the fully concrete model. The
//! refinement loop is manual: edit the restriction/lemma files, rerun.
//!
//! Restrictions and lemmas are written in a small declarative language:
//!
//! ```text
//! restrict abs-datax when IsOwner(c, a) & NoGrant(a) because datax-implies-owner
//! lemma datax-implies-owner: forall c a m: m.dest = c & m.addr = a & m.type = DataX => IsOwner(c, a)
//! ```
//!
//! Predicates range over the concrete state (`cache[c][a].state`,
//! `dir[a].owner`, ...), the message being generated or quantified over
//! (`m.type`, `m.src`, ...), and a few buffer-level builtins (`NoGrant(a)`,
//! `NoMsg(T, a)`, `UniqueMsg(T, a)`, `UniqueGrant(a)`).

use std::collections::BTreeSet;
use std::sync::Arc;

use thiserror::Error;

use crate::mc::{
    explore, ExploreError, ExploreOptions, ExploreStats, Invariant, Model, Rule, RuleInstance,
    Violation, ViolationKind,
};
use crate::protocol::{
    build_model, dir_rules, CacheState, DirState, Message, MsgType, Mutation, Node,
    ProtocolConfig, ProtocolState,
};

pub type Val = u8;

// ---------------------------------------------------------------------------
// Predicate language
// ---------------------------------------------------------------------------

/// A state/message term that a predicate can compare.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    /// Bound cache variable `c`, as a node.
    VarC,
    /// Bound address variable `a`.
    VarA,
    /// Bound value variable `v` (abstract sends only).
    VarV,
    MsgType_,
    MsgSrc,
    MsgDest,
    MsgAddr,
    MsgValue,
    MsgFwdTo,
    /// `cache[c][a].state`
    CacheState_,
    /// `cache[c][a].value`
    CacheValue,
    /// `dir[a].state` / `dir[a].owner` / `dir[a].pending` / `dir[a].value`
    DirState_,
    DirOwner,
    DirPending,
    DirValue,
    /// An uninterpreted literal (message type, state name, `Other`, `dir`,
    /// `none`, or a number), resolved against the typed side of a comparison.
    Lit(String),
}

/// A predicate over a `ProtocolState` plus variable bindings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pred {
    And(Vec<Pred>),
    Implies(Box<Pred>, Box<Pred>),
    Not(Box<Pred>),
    Eq(Term, Term),
    Ne(Term, Term),
    /// `IsOwner(c, a)`: the directory's owner for `a` is cache `c`.
    IsOwner,
    /// `NoGrant(a)`: no DataS/DataE/DataX for `a` buffered anywhere.
    NoGrant,
    /// `UniqueGrant(a)`: at most one grant for `a` buffered.
    UniqueGrant,
    /// `NoMsg(T, a)`: no message of type T for `a` buffered anywhere.
    NoMsg(MsgType),
    /// `UniqueMsg(T, a)`: at most one message of type T for `a` buffered.
    UniqueMsg(MsgType),
}

/// Variable bindings a predicate is evaluated under.
#[derive(Debug, Clone, Copy, Default)]
pub struct Env {
    pub c: Option<usize>,
    pub a: Option<usize>,
    pub v: Option<Val>,
    /// The message in scope, with its destination.
    pub msg: Option<(Node, Message)>,
}

/// The value a term evaluates to.
#[derive(Debug, Clone, PartialEq, Eq)]
enum TermValue {
    Node(Node),
    NodeNone,
    Int(u8),
    MType(MsgType),
    CState(CacheState),
    DState(DirState),
    Lit(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("variable `{0}` is not bound in this context")]
    Unbound(&'static str),
    #[error("comparison needs at least one typed (non-literal) side")]
    UntypedComparison,
}

impl Term {
    fn eval(&self, s: &ProtocolState, env: &Env) -> Result<TermValue, EvalError> {
        let c = || env.c.ok_or(EvalError::Unbound("c"));
        let a = || env.a.ok_or(EvalError::Unbound("a"));
        let m = || env.msg.ok_or(EvalError::Unbound("m"));
        Ok(match self {
            Term::VarC => TermValue::Node(Node::Proc(c()?)),
            Term::VarA => TermValue::Int(a()? as u8),
            Term::VarV => TermValue::Int(env.v.ok_or(EvalError::Unbound("v"))?),
            Term::MsgType_ => TermValue::MType(m()?.1.mtype),
            Term::MsgSrc => TermValue::Node(m()?.1.src),
            Term::MsgDest => TermValue::Node(m()?.0),
            Term::MsgAddr => TermValue::Int(m()?.1.addr as u8),
            Term::MsgValue => m()?.1.value.map_or(TermValue::NodeNone, TermValue::Int),
            Term::MsgFwdTo => m()?.1.fwd_to.map_or(TermValue::NodeNone, TermValue::Node),
            Term::CacheState_ => TermValue::CState(s.caches[c()?][a()?].state),
            Term::CacheValue => TermValue::Int(s.caches[c()?][a()?].value),
            Term::DirState_ => TermValue::DState(s.dir[a()?].state),
            Term::DirOwner => s.dir[a()?].owner.map_or(TermValue::NodeNone, TermValue::Node),
            Term::DirPending => s.dir[a()?].pending.map_or(TermValue::NodeNone, TermValue::Node),
            Term::DirValue => TermValue::Int(s.dir[a()?].value),
            Term::Lit(x) => TermValue::Lit(x.clone()),
        })
    }

    fn vars(&self, out: &mut BTreeSet<&'static str>) {
        match self {
            Term::VarC => {
                out.insert("c");
            }
            Term::VarA => {
                out.insert("a");
            }
            Term::VarV => {
                out.insert("v");
            }
            Term::MsgType_
            | Term::MsgSrc
            | Term::MsgDest
            | Term::MsgAddr
            | Term::MsgValue
            | Term::MsgFwdTo => {
                out.insert("m");
            }
            Term::CacheState_ | Term::CacheValue => {
                out.insert("c");
                out.insert("a");
            }
            Term::DirState_ | Term::DirOwner | Term::DirPending | Term::DirValue => {
                out.insert("a");
            }
            Term::Lit(_) => {}
        }
    }
}

/// Does a typed value match an uninterpreted literal?
fn matches_lit(v: &TermValue, lit: &str) -> bool {
    match v {
        TermValue::Int(i) => lit.parse::<u8>() == Ok(*i),
        TermValue::MType(t) => format!("{t:?}") == lit,
        TermValue::CState(t) => format!("{t:?}") == lit,
        TermValue::DState(t) => format!("{t:?}") == lit,
        TermValue::Node(Node::Other) => lit == "Other",
        TermValue::Node(Node::Dir) => lit == "dir",
        TermValue::Node(Node::Proc(p)) => lit == format!("c{p}"),
        TermValue::NodeNone => lit == "none",
        TermValue::Lit(_) => false,
    }
}

fn values_equal(l: &TermValue, r: &TermValue) -> Result<bool, EvalError> {
    Ok(match (l, r) {
        (TermValue::Lit(_), TermValue::Lit(_)) => return Err(EvalError::UntypedComparison),
        (TermValue::Lit(x), v) | (v, TermValue::Lit(x)) => matches_lit(v, x),
        (a, b) => a == b,
    })
}

/// Messages of type `t` (or any grant type when `t` is None) buffered for
/// address `a`, across all destinations.
fn count_msgs(s: &ProtocolState, t: Option<MsgType>, a: usize) -> usize {
    s.net
        .iter()
        .flatten()
        .filter(|m| m.addr == a && t.map_or(m.is_grant(), |t| m.mtype == t))
        .count()
}

impl Pred {
    pub fn eval(&self, s: &ProtocolState, env: &Env) -> Result<bool, EvalError> {
        Ok(match self {
            Pred::And(ps) => {
                for p in ps {
                    if !p.eval(s, env)? {
                        return Ok(false);
                    }
                }
                true
            }
            Pred::Implies(p, q) => !p.eval(s, env)? || q.eval(s, env)?,
            Pred::Not(p) => !p.eval(s, env)?,
            Pred::Eq(l, r) => values_equal(&l.eval(s, env)?, &r.eval(s, env)?)?,
            Pred::Ne(l, r) => !values_equal(&l.eval(s, env)?, &r.eval(s, env)?)?,
            Pred::IsOwner => {
                let c = env.c.ok_or(EvalError::Unbound("c"))?;
                let a = env.a.ok_or(EvalError::Unbound("a"))?;
                s.dir[a].owner == Some(Node::Proc(c))
            }
            Pred::NoGrant => count_msgs(s, None, env.a.ok_or(EvalError::Unbound("a"))?) == 0,
            Pred::UniqueGrant => count_msgs(s, None, env.a.ok_or(EvalError::Unbound("a"))?) <= 1,
            Pred::NoMsg(t) => count_msgs(s, Some(*t), env.a.ok_or(EvalError::Unbound("a"))?) == 0,
            Pred::UniqueMsg(t) => {
                count_msgs(s, Some(*t), env.a.ok_or(EvalError::Unbound("a"))?) <= 1
            }
        })
    }

    /// The variables the predicate mentions, for static scope checks.
    pub fn vars(&self) -> BTreeSet<&'static str> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<&'static str>) {
        match self {
            Pred::And(ps) => ps.iter().for_each(|p| p.collect_vars(out)),
            Pred::Implies(p, q) => {
                p.collect_vars(out);
                q.collect_vars(out);
            }
            Pred::Not(p) => p.collect_vars(out),
            Pred::Eq(l, r) | Pred::Ne(l, r) => {
                l.vars(out);
                r.vars(out);
            }
            Pred::IsOwner => {
                out.insert("c");
                out.insert("a");
            }
            Pred::NoGrant | Pred::UniqueGrant | Pred::NoMsg(_) | Pred::UniqueMsg(_) => {
                out.insert("a");
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {reason}")]
pub struct ParseError {
    pub line: usize,
    pub reason: String,
}

struct Parser<'a> {
    toks: Vec<&'a str>,
    pos: usize,
    line: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str, line: usize) -> Self {
        // Tokenize: identifiers (letters, digits, '-', '_'), multi-char
        // operators, single punctuation.
        let mut toks = Vec::new();
        let b = text.as_bytes();
        let mut i = 0;
        while i < b.len() {
            let ch = b[i] as char;
            if ch.is_whitespace() {
                i += 1;
            } else if ch.is_alphanumeric() || ch == '_' {
                let start = i;
                while i < b.len() {
                    let c = b[i] as char;
                    // '-' continues an identifier only between alphanumerics
                    // (lemma names like `datax-implies-owner`).
                    if c.is_alphanumeric() || c == '_' {
                        i += 1;
                    } else if c == '-'
                        && i + 1 < b.len()
                        && (b[i + 1] as char).is_alphanumeric()
                    {
                        i += 1;
                    } else {
                        break;
                    }
                }
                toks.push(&text[start..i]);
            } else if text[i..].starts_with("=>") || text[i..].starts_with("!=") {
                toks.push(&text[i..i + 2]);
                i += 2;
            } else {
                toks.push(&text[i..i + 1]);
                i += 1;
            }
        }
        Parser { toks, pos: 0, line }
    }

    fn err(&self, reason: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line,
            reason: reason.into(),
        }
    }

    fn peek(&self) -> Option<&'a str> {
        self.toks.get(self.pos).copied()
    }

    fn next(&mut self) -> Result<&'a str, ParseError> {
        let t = self.peek().ok_or_else(|| self.err("unexpected end of line"))?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, t: &str) -> Result<(), ParseError> {
        let got = self.next()?;
        if got != t {
            return Err(self.err(format!("expected `{t}`, got `{got}`")));
        }
        Ok(())
    }

    fn eat(&mut self, t: &str) -> bool {
        if self.peek() == Some(t) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    // pred := conj ('=>' pred)?
    fn pred(&mut self) -> Result<Pred, ParseError> {
        let lhs = self.conj()?;
        if self.eat("=>") {
            let rhs = self.pred()?;
            return Ok(Pred::Implies(Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    // conj := atom ('&' atom)*
    fn conj(&mut self) -> Result<Pred, ParseError> {
        let mut parts = vec![self.atom()?];
        while self.eat("&") {
            parts.push(self.atom()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            Pred::And(parts)
        })
    }

    fn msg_type(&mut self) -> Result<MsgType, ParseError> {
        let t = self.next()?;
        Ok(match t {
            "GetS" => MsgType::GetS,
            "GetX" => MsgType::GetX,
            "DataS" => MsgType::DataS,
            "DataE" => MsgType::DataE,
            "DataX" => MsgType::DataX,
            "Data" => MsgType::Data,
            "Ack" => MsgType::Ack,
            "FwdS" => MsgType::FwdS,
            "FwdX" => MsgType::FwdX,
            _ => return Err(self.err(format!("unknown message type `{t}`"))),
        })
    }

    fn var_args(&mut self, expected: &[&str]) -> Result<(), ParseError> {
        self.expect("(")?;
        for (i, v) in expected.iter().enumerate() {
            if i > 0 {
                self.expect(",")?;
            }
            self.expect(v)?;
        }
        self.expect(")")
    }

    fn atom(&mut self) -> Result<Pred, ParseError> {
        if self.eat("!") {
            return Ok(Pred::Not(Box::new(self.atom()?)));
        }
        if self.eat("(") {
            let p = self.pred()?;
            self.expect(")")?;
            return Ok(p);
        }
        match self.peek() {
            Some("IsOwner") => {
                self.next()?;
                self.var_args(&["c", "a"])?;
                return Ok(Pred::IsOwner);
            }
            Some("NoGrant") => {
                self.next()?;
                self.var_args(&["a"])?;
                return Ok(Pred::NoGrant);
            }
            Some("UniqueGrant") => {
                self.next()?;
                self.var_args(&["a"])?;
                return Ok(Pred::UniqueGrant);
            }
            Some("NoMsg") => {
                self.next()?;
                self.expect("(")?;
                let t = self.msg_type()?;
                self.expect(",")?;
                self.expect("a")?;
                self.expect(")")?;
                return Ok(Pred::NoMsg(t));
            }
            Some("UniqueMsg") => {
                self.next()?;
                self.expect("(")?;
                let t = self.msg_type()?;
                self.expect(",")?;
                self.expect("a")?;
                self.expect(")")?;
                return Ok(Pred::UniqueMsg(t));
            }
            _ => {}
        }
        let lhs = self.term()?;
        let op = self.next()?;
        let rhs = self.term()?;
        match op {
            "=" => Ok(Pred::Eq(lhs, rhs)),
            "!=" => Ok(Pred::Ne(lhs, rhs)),
            _ => Err(self.err(format!("expected `=` or `!=`, got `{op}`"))),
        }
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        let head = self.next()?;
        match head {
            "c" => Ok(Term::VarC),
            "a" => Ok(Term::VarA),
            "v" => Ok(Term::VarV),
            "m" => {
                self.expect(".")?;
                match self.next()? {
                    "type" => Ok(Term::MsgType_),
                    "src" => Ok(Term::MsgSrc),
                    "dest" => Ok(Term::MsgDest),
                    "addr" => Ok(Term::MsgAddr),
                    "value" => Ok(Term::MsgValue),
                    "fwd_to" => Ok(Term::MsgFwdTo),
                    f => Err(self.err(format!("unknown message field `{f}`"))),
                }
            }
            "cache" => {
                self.expect("[")?;
                self.expect("c")?;
                self.expect("]")?;
                self.expect("[")?;
                self.expect("a")?;
                self.expect("]")?;
                self.expect(".")?;
                match self.next()? {
                    "state" => Ok(Term::CacheState_),
                    "value" => Ok(Term::CacheValue),
                    f => Err(self.err(format!("unknown cache field `{f}`"))),
                }
            }
            "dir" if self.peek() == Some("[") => {
                self.expect("[")?;
                self.expect("a")?;
                self.expect("]")?;
                self.expect(".")?;
                match self.next()? {
                    "state" => Ok(Term::DirState_),
                    "owner" => Ok(Term::DirOwner),
                    "pending" => Ok(Term::DirPending),
                    "value" => Ok(Term::DirValue),
                    f => Err(self.err(format!("unknown directory field `{f}`"))),
                }
            }
            lit => Ok(Term::Lit(lit.to_string())),
        }
    }
}

/// A strengthening of one abstract send rule, justified by lemmas.
#[derive(Debug, Clone)]
pub struct Restriction {
    /// Abstract rule family the restriction applies to (e.g. `abs-datax`).
    pub rule: String,
    pub pred: Pred,
    /// Names of the non-interference lemmas that justify it.
    pub lemmas: Vec<String>,
    /// The source line, kept as the human-readable rationale.
    pub rationale: String,
}

/// An invariant of the fully concrete model, justifying a restriction.
#[derive(Debug, Clone)]
pub struct NonInterferenceLemma {
    pub name: String,
    /// Quantified variables, a subset of {c, a, m}.
    pub vars: Vec<String>,
    pub pred: Pred,
}

/// Parses a restriction/lemma file: one statement per line, `#` comments.
pub fn parse_param_file(
    text: &str,
) -> Result<(Vec<Restriction>, Vec<NonInterferenceLemma>), ParseError> {
    let mut restrictions = Vec::new();
    let mut lemmas = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut p = Parser::new(line, line_no);
        match p.next()? {
            "restrict" => {
                let rule = p.next()?.to_string();
                p.expect("when")?;
                let pred = p.pred()?;
                let mut names = Vec::new();
                if p.eat("because") {
                    loop {
                        names.push(p.next()?.to_string());
                        if !p.eat(",") {
                            break;
                        }
                    }
                }
                if p.peek().is_some() {
                    return Err(p.err(format!("trailing input `{}`", p.peek().unwrap())));
                }
                restrictions.push(Restriction {
                    rule,
                    pred,
                    lemmas: names,
                    rationale: line.to_string(),
                });
            }
            "lemma" => {
                let name = p.next()?.to_string();
                p.expect(":")?;
                p.expect("forall")?;
                let mut vars = Vec::new();
                while let Some(t) = p.peek() {
                    if t == ":" {
                        break;
                    }
                    let v = p.next()?;
                    if !matches!(v, "c" | "a" | "m") {
                        return Err(p.err(format!(
                            "unknown quantified variable `{v}` (expected c, a or m)"
                        )));
                    }
                    vars.push(v.to_string());
                }
                p.expect(":")?;
                let pred = p.pred()?;
                if p.peek().is_some() {
                    return Err(p.err(format!("trailing input `{}`", p.peek().unwrap())));
                }
                for used in pred.vars() {
                    if !vars.iter().any(|v| v == used) {
                        return Err(p.err(format!("lemma uses undeclared variable `{used}`")));
                    }
                }
                lemmas.push(NonInterferenceLemma {
                    name,
                    vars,
                    pred,
                });
            }
            other => {
                return Err(p.err(format!(
                    "expected `restrict` or `lemma`, got `{other}`"
                )))
            }
        }
    }
    Ok((restrictions, lemmas))
}

// ---------------------------------------------------------------------------
// Lemma checking
// ---------------------------------------------------------------------------

/// All (destination, message) pairs currently buffered.
fn buffered_messages(s: &ProtocolState, cfg: ProtocolConfig) -> Vec<(Node, Message)> {
    let mut out = Vec::new();
    for (i, buf) in s.net.iter().enumerate() {
        let dest = if i == cfg.procs { Node::Dir } else { Node::Proc(i) };
        for m in buf {
            out.push((dest, *m));
        }
    }
    out
}

impl NonInterferenceLemma {
    /// Evaluates the lemma on one state, quantifying the declared variables.
    /// Evaluation errors surface as `false` so a malformed lemma cannot
    /// silently pass.
    pub fn holds(&self, s: &ProtocolState, cfg: ProtocolConfig) -> bool {
        let has = |v: &str| self.vars.iter().any(|x| x == v);
        let cs: Vec<Option<usize>> = if has("c") {
            (0..cfg.procs).map(Some).collect()
        } else {
            vec![None]
        };
        let addrs: Vec<Option<usize>> = if has("a") {
            (0..cfg.addrs).map(Some).collect()
        } else {
            vec![None]
        };
        let msgs: Vec<Option<(Node, Message)>> = if has("m") {
            buffered_messages(s, cfg).into_iter().map(Some).collect()
        } else {
            vec![None]
        };
        for &c in &cs {
            for &a in &addrs {
                for &msg in &msgs {
                    let env = Env { c, a, v: None, msg };
                    if !self.pred.eval(s, &env).unwrap_or(false) {
                        return false;
                    }
                }
            }
        }
        true
    }
}

#[derive(Debug)]
pub struct LemmaReport {
    pub stats: ExploreStats,
    /// First failing lemma, with the formatted counterexample.
    pub failure: Option<(String, Violation)>,
}

impl LemmaReport {
    pub fn pass(&self) -> bool {
        self.failure.is_none()
    }
}

/// Checks every lemma as an invariant over the fully concrete model's
/// reachable states (no abstract cache).
pub fn check_lemmas_concrete(
    cfg: ProtocolConfig,
    lemmas: &[NonInterferenceLemma],
    opts: &ExploreOptions<ProtocolState>,
) -> Result<LemmaReport, ExploreError> {
    let mut model = build_model(cfg);
    install_lemma_invariants(&mut model, cfg, lemmas);
    let report = explore(&model, opts)?;
    Ok(LemmaReport {
        stats: report.stats,
        failure: report.violation.map(|v| {
            let name = match &v.kind {
                ViolationKind::InvariantFailed(n) => n.clone(),
                ViolationKind::Deadlock => "deadlock".to_string(),
            };
            (name, v)
        }),
    })
}

fn install_lemma_invariants(
    model: &mut Model<ProtocolState, ()>,
    cfg: ProtocolConfig,
    lemmas: &[NonInterferenceLemma],
) {
    for lemma in lemmas {
        let l = lemma.clone();
        model.invariants.push(Invariant {
            name: format!("lemma:{}", lemma.name),
            check: Box::new(move |s: &ProtocolState| l.holds(s, cfg)),
        });
    }
}

// ---------------------------------------------------------------------------
// The abstract model
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("restriction targets unknown abstract rule `{0}`")]
    UnknownRule(String),
    #[error("restriction on `{rule}` uses variable `{var}` not available there")]
    BadVariable { rule: String, var: String },
    #[error("restriction on `{rule}` names missing lemma `{lemma}`")]
    MissingLemma { rule: String, lemma: String },
    #[error("restriction on `{rule}` names no justifying lemma")]
    UnpairedRestriction { rule: String },
}

/// The names of the abstract send rule families, with the variables their
/// restriction predicates may reference.
pub const ABSTRACT_RULES: [(&str, &[&str]); 6] = [
    ("abs-gets", &["a", "m"]),
    ("abs-getx", &["a", "m"]),
    ("abs-ack-we", &["a", "m"]),
    ("abs-ack-wa", &["a", "m"]),
    ("abs-data", &["a", "v", "m"]),
    ("abs-datax", &["c", "a", "v", "m"]),
];

pub struct AbstractModel {
    pub model: Model<ProtocolState, ()>,
    pub restrictions: Vec<Restriction>,
    pub lemmas: Vec<NonInterferenceLemma>,
}

/// One abstract send instance: the guard is destination-side receivability
/// plus every applicable restriction; the effect buffers the message.
fn abs_instance(
    cfg: ProtocolConfig,
    binding: String,
    dest: Node,
    msg: Message,
    env: Env,
    base: impl Fn(&ProtocolState) -> bool + Send + Sync + 'static,
    preds: Vec<Arc<Pred>>,
) -> RuleInstance<ProtocolState, ()> {
    let env = Env {
        msg: Some((dest, msg)),
        ..env
    };
    RuleInstance {
        binding,
        guard: Box::new(move |s: &ProtocolState| {
            base(s)
                && s.has_space(cfg, dest)
                && preds
                    .iter()
                    .all(|p| p.eval(s, &env).expect("restriction vars validated"))
        }),
        effect: Box::new(move |s: &ProtocolState| {
            let mut n = s.clone();
            n.send(cfg, dest, msg);
            n
        }),
        label: None,
    }
}

/// Builds the parameterized model: the concrete model's processor and cache
/// rules, directory rules extended to serve `Other`, and one send family per
/// message the abstract cache could produce. Lemmas are installed as
/// invariants over the concrete state portion. There are no abstract reads:
/// observable actions exist only at the concrete processors.
pub fn abstractify(
    cfg: ProtocolConfig,
    restrictions: Vec<Restriction>,
    lemmas: Vec<NonInterferenceLemma>,
) -> Result<AbstractModel, ParamError> {
    // Validate restrictions: known rule, available variables, paired lemmas.
    for r in &restrictions {
        let allowed = ABSTRACT_RULES
            .iter()
            .find(|(name, _)| *name == r.rule)
            .map(|(_, vars)| *vars)
            .ok_or_else(|| ParamError::UnknownRule(r.rule.clone()))?;
        for var in r.pred.vars() {
            if !allowed.contains(&var) {
                return Err(ParamError::BadVariable {
                    rule: r.rule.clone(),
                    var: var.to_string(),
                });
            }
        }
        if r.lemmas.is_empty() {
            return Err(ParamError::UnpairedRestriction {
                rule: r.rule.clone(),
            });
        }
        for l in &r.lemmas {
            if !lemmas.iter().any(|x| &x.name == l) {
                return Err(ParamError::MissingLemma {
                    rule: r.rule.clone(),
                    lemma: l.clone(),
                });
            }
        }
    }
    let preds_for = |rule: &str| -> Vec<Arc<Pred>> {
        restrictions
            .iter()
            .filter(|r| r.rule == rule)
            .map(|r| Arc::new(r.pred.clone()))
            .collect()
    };

    let mut model = build_model(cfg);
    model.name = format!("{} + Other", model.name);
    // Replace the directory rules with ones that also serve Other.
    model.rules.retain(|r| !r.name.starts_with("dir-recv-"));
    let mut requesters: Vec<Node> = (0..cfg.procs).map(Node::Proc).collect();
    requesters.push(Node::Other);
    model
        .rules
        .extend(dir_rules(cfg, Mutation::None, requesters));

    // Abstract send families. Requests are always possible (the unmodelled
    // processors can issue them at any time); responses are guarded by the
    // destination being able to receive them.
    let mut gets = Vec::new();
    let mut getx = Vec::new();
    let mut ack_we = Vec::new();
    let mut ack_wa = Vec::new();
    let mut data = Vec::new();
    let mut datax = Vec::new();
    for a in 0..cfg.addrs {
        let env = Env {
            a: Some(a),
            ..Env::default()
        };
        gets.push(abs_instance(
            cfg,
            format!("a={a}"),
            Node::Dir,
            Message::new(MsgType::GetS, Node::Other, a),
            env,
            |_| true,
            preds_for("abs-gets"),
        ));
        getx.push(abs_instance(
            cfg,
            format!("a={a}"),
            Node::Dir,
            Message::new(MsgType::GetX, Node::Other, a),
            env,
            |_| true,
            preds_for("abs-getx"),
        ));
        ack_we.push(abs_instance(
            cfg,
            format!("a={a}"),
            Node::Dir,
            Message::new(MsgType::Ack, Node::Other, a),
            env,
            move |s| s.dir[a].state == DirState::WE,
            preds_for("abs-ack-we"),
        ));
        ack_wa.push(abs_instance(
            cfg,
            format!("a={a}"),
            Node::Dir,
            Message::new(MsgType::Ack, Node::Other, a),
            env,
            move |s| s.dir[a].state == DirState::WA,
            preds_for("abs-ack-wa"),
        ));
        for v in cfg.values() {
            let env = Env {
                v: Some(v),
                ..env
            };
            data.push(abs_instance(
                cfg,
                format!("a={a} v={v}"),
                Node::Dir,
                Message::new(MsgType::Data, Node::Other, a).with_value(v),
                env,
                move |s| s.dir[a].state == DirState::WSd,
                preds_for("abs-data"),
            ));
            for c in 0..cfg.procs {
                let env = Env {
                    c: Some(c),
                    ..env
                };
                datax.push(abs_instance(
                    cfg,
                    format!("c={c} a={a} v={v}"),
                    Node::Proc(c),
                    Message::new(MsgType::DataX, Node::Other, a).with_value(v),
                    env,
                    move |s| s.caches[c][a].state == CacheState::WX,
                    preds_for("abs-datax"),
                ));
            }
        }
    }
    for (name, instances) in [
        ("abs-gets", gets),
        ("abs-getx", getx),
        ("abs-ack-we", ack_we),
        ("abs-ack-wa", ack_wa),
        ("abs-data", data),
        ("abs-datax", datax),
    ] {
        model.rules.push(Rule {
            name: name.into(),
            instances,
        });
    }

    install_lemma_invariants(&mut model, cfg, &lemmas);
    Ok(AbstractModel {
        model,
        restrictions,
        lemmas,
    })
}

#[derive(Debug)]
pub struct ParamReport {
    pub stats: ExploreStats,
    pub violation: Option<Violation>,
    /// The last abstract send on a violating path, if any: the message that
    /// triggered the counterexample.
    pub abstract_trigger: Option<String>,
}

impl ParamReport {
    pub fn pass(&self) -> bool {
        self.violation.is_none()
    }
}

/// Explores the abstract model, checking Match, the structural invariants
/// and every lemma on the concrete state portion. Passing means the
/// refinement holds for any number of processors beyond the concrete N.
/// Deadlock detection is off: abstract sends can saturate buffers in ways no
/// finite set of real processors would (abstract stalls are exempt);
/// deadlock freedom is established on the concrete model.
pub fn check_parameterized(
    am: &AbstractModel,
    mut opts: ExploreOptions<ProtocolState>,
) -> Result<ParamReport, ExploreError> {
    opts.check_deadlock = false;
    let report = explore(&am.model, &opts)?;
    let abstract_trigger = report.violation.as_ref().and_then(|v| {
        v.path
            .iter()
            .rev()
            .find(|step| step.rule.starts_with("abs-"))
            .map(|step| format!("{} [{}]", step.rule, step.binding))
    });
    Ok(ParamReport {
        stats: report.stats,
        violation: report.violation,
        abstract_trigger,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::StateCodec;

    fn cfg212() -> ProtocolConfig {
        ProtocolConfig::new(2, 1, 2).unwrap()
    }

    #[test]
    fn parse_restriction_and_lemma() {
        let text = "\
# comment
restrict abs-datax when IsOwner(c, a) & NoGrant(a) because datax-implies-owner

lemma datax-implies-owner: forall c a m: m.dest = c & m.addr = a & m.type = DataX => IsOwner(c, a)
";
        let (rs, ls) = parse_param_file(text).unwrap();
        assert_eq!(rs.len(), 1);
        assert_eq!(rs[0].rule, "abs-datax");
        assert_eq!(rs[0].lemmas, vec!["datax-implies-owner"]);
        assert!(matches!(rs[0].pred, Pred::And(_)));
        assert_eq!(ls.len(), 1);
        assert_eq!(ls[0].vars, vec!["c", "a", "m"]);
        assert!(matches!(ls[0].pred, Pred::Implies(_, _)));
    }

    #[test]
    fn parse_rejects_undeclared_variable() {
        let err = parse_param_file("lemma bad: forall a: IsOwner(c, a)").unwrap_err();
        assert!(err.reason.contains("undeclared variable `c`"), "{err}");
    }

    #[test]
    fn parse_reports_line_numbers() {
        let err = parse_param_file("\n\nrestrict abs-datax whenever x").unwrap_err();
        assert_eq!(err.line, 3);
    }

    #[test]
    fn predicate_evaluates_on_a_directory_state() {
        let cfg = cfg212();
        let mut s = ProtocolState::initial(cfg);
        s.dir[0].state = DirState::E;
        s.dir[0].owner = Some(Node::Proc(1));
        let (_, ls) = parse_param_file(
            "lemma owner-is-c1: forall a: dir[a].owner = c1 & dir[a].state = E",
        )
        .unwrap();
        assert!(ls[0].holds(&s, cfg));
        s.dir[0].owner = Some(Node::Other);
        assert!(!ls[0].holds(&s, cfg));
        let (_, ls) = parse_param_file("lemma owner-abs: forall a: dir[a].owner = Other").unwrap();
        assert!(ls[0].holds(&s, cfg));
    }

    #[test]
    fn false_lemma_fails_with_short_counterexample() {
        let cfg = cfg212();
        let (_, ls) =
            parse_param_file("lemma no-msg-ever: forall a: NoMsg(GetS, a) & NoMsg(GetX, a)")
                .unwrap();
        let r = check_lemmas_concrete(cfg, &ls, &ExploreOptions::default()).unwrap();
        let (name, v) = r.failure.expect("lemma must fail");
        assert_eq!(name, "lemma:no-msg-ever");
        assert_eq!(v.path.len(), 1, "a single request refutes it");
    }

    #[test]
    fn abstractify_rejects_unknown_rule_and_missing_lemma() {
        let cfg = cfg212();
        let (rs, ls) =
            parse_param_file("restrict abs-bogus when IsOwner(c, a) because x").unwrap();
        assert!(matches!(
            abstractify(cfg, rs, ls),
            Err(ParamError::UnknownRule(_))
        ));
        let (rs, ls) =
            parse_param_file("restrict abs-datax when IsOwner(c, a) because ghost").unwrap();
        assert!(matches!(
            abstractify(cfg, rs, ls),
            Err(ParamError::MissingLemma { .. })
        ));
        let (rs, ls) = parse_param_file("restrict abs-datax when IsOwner(c, a)").unwrap();
        assert!(matches!(
            abstractify(cfg, rs, ls),
            Err(ParamError::UnpairedRestriction { .. })
        ));
    }

    #[test]
    fn abstractify_rejects_out_of_scope_variable() {
        let cfg = cfg212();
        let (rs, ls) = parse_param_file(
            "restrict abs-gets when IsOwner(c, a) because l\nlemma l: forall a: dir[a].state = I",
        )
        .unwrap();
        assert!(matches!(
            abstractify(cfg, rs, ls),
            Err(ParamError::BadVariable { .. })
        ));
    }

    #[test]
    fn abstract_model_has_no_read_rules_for_other() {
        let am = abstractify(cfg212(), Vec::new(), Vec::new()).unwrap();
        // Observable actions (reads/writes) exist only at concrete
        // processors; the abstract families only send messages.
        for rule in &am.model.rules {
            if rule.name.starts_with("abs-") {
                assert!(rule.name.starts_with("abs-ge") || rule.name.starts_with("abs-ack")
                    || rule.name.starts_with("abs-data"));
            }
        }
        let names: Vec<_> = am.model.rules.iter().map(|r| r.name.as_str()).collect();
        assert!(names.contains(&"abs-datax"));
        assert!(names.contains(&"read-hit"), "concrete rules kept");
    }

    /// Over-approximation: every message a concrete "extra" processor sends
    /// in the (1+1)-processor model is generable by the unrestricted
    /// abstract cache from the projected state.
    #[test]
    fn unrestricted_other_covers_concrete_extra_processor() {
        let cfg2 = cfg212();
        let model2 = build_model(cfg2);
        let opts = ExploreOptions {
            collect_states: true,
            ..Default::default()
        };
        let states = explore(&model2, &opts).unwrap().collected;
        assert!(!states.is_empty());
        // Abstract model over 1 concrete processor; align the buffer bound
        // with the 2-processor model so projection cannot overflow.
        let cfg1 = ProtocolConfig::new(1, 1, 2).unwrap().with_net_max(cfg2.net_max);
        let am = abstractify(cfg1, Vec::new(), Vec::new()).unwrap();
        let extra = 1usize; // the processor we project away
        let rename = |n: Node| match n {
            Node::Proc(p) if p == extra => Node::Other,
            other => other,
        };
        let project = |s: &ProtocolState| -> ProtocolState {
            let mut out = ProtocolState::initial(cfg1);
            out.caches[0] = s.caches[0].clone();
            out.dir = s.dir.clone();
            for d in out.dir.iter_mut() {
                d.owner = d.owner.map(rename);
                d.pending = d.pending.map(rename);
            }
            // Buffer 0 keeps proc 0's messages; the directory buffer moves
            // from index 2 to index 1; messages to the extra proc vanish.
            for (dst, src_idx) in [(0usize, 0usize), (1, 2)] {
                let mut buf: Vec<Message> = s.net[src_idx]
                    .iter()
                    .map(|m| {
                        let mut m = *m;
                        m.src = rename(m.src);
                        m.fwd_to = m.fwd_to.map(rename);
                        m
                    })
                    .collect();
                buf.sort();
                out.net[dst] = buf;
            }
            out.shadow.local = vec![s.shadow.local[0].clone()];
            out.shadow.global = s.shadow.global.clone();
            out
        };
        let mut sends_checked = 0u64;
        for s in &states {
            for rule in &model2.rules {
                // Only the extra processor's own send actions matter.
                if !matches!(
                    rule.name.as_str(),
                    "read-miss" | "write-miss" | "cache-recv-data-s" | "cache-recv-data-e"
                        | "cache-recv-data-x" | "cache-recv-fwd-s" | "cache-recv-fwd-x"
                ) {
                    continue;
                }
                for inst in &rule.instances {
                    if !inst.binding.starts_with(&format!("p={extra}"))
                        || !(inst.guard)(s)
                    {
                        continue;
                    }
                    let succ = (inst.effect)(s);
                    // New messages from the extra processor to surviving
                    // destinations.
                    for (idx, dst) in [(0usize, Node::Proc(0)), (2, Node::Dir)] {
                        for m in &succ.net[idx] {
                            let before =
                                s.net[idx].iter().filter(|x| *x == m).count();
                            let after =
                                succ.net[idx].iter().filter(|x| *x == m).count();
                            if after <= before || m.src != Node::Proc(extra) {
                                continue;
                            }
                            let mut want = *m;
                            want.src = Node::Other;
                            want.fwd_to = want.fwd_to.map(rename);
                            let proj = project(s);
                            let generable = am
                                .model
                                .rules
                                .iter()
                                .filter(|r| r.name.starts_with("abs-"))
                                .flat_map(|r| &r.instances)
                                .any(|ai| {
                                    if !(ai.guard)(&proj) {
                                        return false;
                                    }
                                    let nxt = (ai.effect)(&proj);
                                    let di = match dst {
                                        Node::Dir => cfg1.procs,
                                        Node::Proc(p) => p,
                                        Node::Other => unreachable!(),
                                    };
                                    nxt.net[di].contains(&want)
                                });
                            assert!(
                                generable,
                                "extra-processor send not covered: {want:?}\nstate:\n{}",
                                s.dump(cfg2)
                            );
                            sends_checked += 1;
                        }
                    }
                }
            }
        }
        assert!(sends_checked > 100, "replay exercised {sends_checked} sends");
    }

    #[test]
    fn projection_helper_sanity() {
        // Guard against silent drift between dump vocabulary and DSL terms.
        let cfg = cfg212();
        let s = ProtocolState::initial(cfg);
        assert!(s.encode().len() > 8);
    }
}
