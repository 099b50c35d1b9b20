//! Litmus tests: a small text format for multi-threaded read/write programs
//! with an observability question, two execution engines (axiomatic
//! enumeration and exhaustive TSO-LB interleaving), verdict comparison, and
//! a seeded random generator for differential campaigns.
//!
//! ```text
//! test sb;
//! init x=0 y=0;
//! thread P1 { x <- 1; r1 <- y };
//! thread P2 { y <- 1; r2 <- x };
//! observable? r1=0 & r2=1;
//! ```
//!
//! Assignment targets that name a declared address are stores; targets that
//! do not are registers, and their right-hand side must be a declared
//! address (a load). Each register is written exactly once. Fences are not
//! part of the input language and are rejected.

use std::collections::BTreeMap;
use std::fmt;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::mcm::{self, Enumeration};
use crate::tsolb::{self, LbTrace};

/// One instruction; `addr` indexes the test's declared address list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Instr {
    Write { addr: u32, value: u32 },
    Read { addr: u32, reg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Engine {
    Axiomatic,
    TsoLb,
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Engine::Axiomatic => write!(f, "axiomatic"),
            Engine::TsoLb => write!(f, "tsolb"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Observable,
    NotObservable,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Observable => write!(f, "observable"),
            Verdict::NotObservable => write!(f, "not-observable"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LitmusTest {
    pub name: String,
    pub addr_names: Vec<String>,
    pub init: Vec<u32>,
    pub thread_names: Vec<String>,
    pub threads: Vec<Vec<Instr>>,
    /// Conjunction of register equalities under `observable?`.
    pub condition: Vec<(String, u32)>,
    /// Optional declared verdicts per engine.
    pub expected: BTreeMap<Engine, Verdict>,
}

impl LitmusTest {
    /// Address indices, 0..n in declaration order.
    pub fn addrs(&self) -> Vec<u32> {
        (0..self.addr_names.len() as u32).collect()
    }

    pub fn init_value(&self, addr: u32) -> u32 {
        self.init[addr as usize]
    }

    /// Registers in order of first appearance (thread-major).
    pub fn registers(&self) -> Vec<String> {
        let mut out = Vec::new();
        for thread in &self.threads {
            for instr in thread {
                if let Instr::Read { reg, .. } = instr {
                    if !out.contains(reg) {
                        out.push(reg.clone());
                    }
                }
            }
        }
        out
    }

    /// Size of the value domain: every readable value is an initial or
    /// written value, so 0..=max covers them all.
    pub fn value_domain(&self) -> u8 {
        let mut max = 0u32;
        for &v in &self.init {
            max = max.max(v);
        }
        for thread in &self.threads {
            for instr in thread {
                if let Instr::Write { value, .. } = instr {
                    max = max.max(*value);
                }
            }
        }
        (max + 1).min(256) as u8
    }

    pub fn validate(&self) -> Result<(), ParseError> {
        if self.addr_names.is_empty() {
            return Err(ParseError::Invalid("no addresses declared".into()));
        }
        let mut seen = BTreeMap::new();
        for (t, thread) in self.threads.iter().enumerate() {
            for instr in thread {
                match instr {
                    Instr::Write { addr, value } => {
                        if *addr as usize >= self.addr_names.len() {
                            return Err(ParseError::Invalid("address out of range".into()));
                        }
                        if *value > u8::MAX as u32 {
                            return Err(ParseError::Invalid(format!(
                                "value {value} exceeds the supported domain"
                            )));
                        }
                    }
                    Instr::Read { addr, reg } => {
                        if *addr as usize >= self.addr_names.len() {
                            return Err(ParseError::Invalid("address out of range".into()));
                        }
                        if let Some(prev) = seen.insert(reg.clone(), t) {
                            return Err(ParseError::Invalid(format!(
                                "register {reg} written more than once (threads {prev} and {t})"
                            )));
                        }
                    }
                }
            }
        }
        for (reg, _) in &self.condition {
            if !seen.contains_key(reg) {
                return Err(ParseError::Invalid(format!(
                    "condition names unknown register {reg}"
                )));
            }
        }
        for &v in &self.init {
            if v > u8::MAX as u32 {
                return Err(ParseError::Invalid(
                    "initial value exceeds the supported domain".into(),
                ));
            }
        }
        Ok(())
    }

    /// The one-thread smoke test: x <- 1; r <- x, observable? r=1.
    pub fn single_thread_store_load() -> LitmusTest {
        LitmusTest {
            name: "store-load".into(),
            addr_names: vec!["x".into()],
            init: vec![0],
            thread_names: vec!["P1".into()],
            threads: vec![vec![
                Instr::Write { addr: 0, value: 1 },
                Instr::Read {
                    addr: 0,
                    reg: "r".into(),
                },
            ]],
            condition: vec![("r".into(), 1)],
            expected: BTreeMap::new(),
        }
    }
}

impl fmt::Display for LitmusTest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "test {};", self.name)?;
        write!(f, "init")?;
        for (a, name) in self.addr_names.iter().enumerate() {
            write!(f, " {name}={}", self.init[a])?;
        }
        writeln!(f, ";")?;
        for (t, thread) in self.threads.iter().enumerate() {
            write!(f, "thread {} {{ ", self.thread_names[t])?;
            let body: Vec<String> = thread
                .iter()
                .map(|i| match i {
                    Instr::Write { addr, value } => {
                        format!("{} <- {value}", self.addr_names[*addr as usize])
                    }
                    Instr::Read { addr, reg } => {
                        format!("{reg} <- {}", self.addr_names[*addr as usize])
                    }
                })
                .collect();
            writeln!(f, "{} }};", body.join("; "))?;
        }
        let cond: Vec<String> = self
            .condition
            .iter()
            .map(|(r, v)| format!("{r}={v}"))
            .collect();
        writeln!(f, "observable? {};", cond.join(" & "))?;
        for (engine, verdict) in &self.expected {
            writeln!(f, "expect {engine} {verdict};")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: expected {expected}, found {found}")]
    Unexpected {
        line: usize,
        expected: String,
        found: String,
    },
    #[error("line {0}: fences are not supported by this input language")]
    FenceUnsupported(usize),
    #[error("invalid test: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(u32),
    Sym(char),
    Arrow,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(n) => write!(f, "`{n}`"),
            Tok::Sym(c) => write!(f, "`{c}`"),
            Tok::Arrow => write!(f, "`<-`"),
        }
    }
}

fn lex(input: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let mut out = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        let mut chars = line.chars().peekable();
        let lineno = lineno + 1;
        while let Some(&c) = chars.peek() {
            if c.is_whitespace() {
                chars.next();
            } else if c.is_ascii_alphabetic() || c == '_' {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' || c == '-' {
                        s.push(c);
                        chars.next();
                    } else {
                        break;
                    }
                }
                out.push((Tok::Ident(s), lineno));
            } else if c.is_ascii_digit() {
                let mut n = 0u32;
                while let Some(&c) = chars.peek() {
                    if let Some(d) = c.to_digit(10) {
                        n = n.saturating_mul(10).saturating_add(d);
                        chars.next();
                    } else {
                        break;
                    }
                }
                out.push((Tok::Int(n), lineno));
            } else if c == '<' {
                chars.next();
                if chars.peek() == Some(&'-') {
                    chars.next();
                    out.push((Tok::Arrow, lineno));
                } else {
                    return Err(ParseError::Unexpected {
                        line: lineno,
                        expected: "`<-`".into(),
                        found: "`<`".into(),
                    });
                }
            } else if "{};=&?".contains(c) {
                chars.next();
                out.push((Tok::Sym(c), lineno));
            } else {
                return Err(ParseError::Unexpected {
                    line: lineno,
                    expected: "a token".into(),
                    found: format!("`{c}`"),
                });
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn line(&self) -> usize {
        self.toks
            .get(self.pos.min(self.toks.len().saturating_sub(1)))
            .map(|(_, l)| *l)
            .unwrap_or(0)
    }

    fn err(&self, expected: &str) -> ParseError {
        ParseError::Unexpected {
            line: self.line(),
            expected: expected.into(),
            found: self
                .peek()
                .map(|t| t.to_string())
                .unwrap_or_else(|| "end of input".into()),
        }
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn expect_sym(&mut self, c: char) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::Sym(s)) if *s == c => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err(&format!("`{c}`"))),
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) if s == kw => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err(&format!("`{kw}`"))),
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err(what)),
        }
    }

    fn int(&mut self) -> Result<u32, ParseError> {
        match self.peek() {
            Some(Tok::Int(n)) => {
                let n = *n;
                self.pos += 1;
                Ok(n)
            }
            _ => Err(self.err("an integer")),
        }
    }
}

/// Parses the litmus text format.
pub fn parse(input: &str) -> Result<LitmusTest, ParseError> {
    let mut p = Parser {
        toks: lex(input)?,
        pos: 0,
    };
    p.expect_keyword("test")?;
    let name = p.ident("a test name")?;
    p.expect_sym(';')?;

    p.expect_keyword("init")?;
    let mut addr_names = Vec::new();
    let mut init = Vec::new();
    while let Some(Tok::Ident(_)) = p.peek() {
        let a = p.ident("an address")?;
        p.expect_sym('=')?;
        let v = p.int()?;
        if addr_names.contains(&a) {
            return Err(ParseError::Invalid(format!("address {a} declared twice")));
        }
        addr_names.push(a);
        init.push(v);
    }
    p.expect_sym(';')?;

    let mut thread_names = Vec::new();
    let mut threads = Vec::new();
    while matches!(p.peek(), Some(Tok::Ident(s)) if s == "thread") {
        p.expect_keyword("thread")?;
        thread_names.push(p.ident("a thread name")?);
        p.expect_sym('{')?;
        let mut body = Vec::new();
        loop {
            if matches!(p.peek(), Some(Tok::Sym('}'))) {
                break;
            }
            let line = p.line();
            let lhs = p.ident("an assignment target")?;
            if lhs == "mfence" || lhs == "fence" {
                return Err(ParseError::FenceUnsupported(line));
            }
            match p.peek() {
                Some(Tok::Arrow) => {
                    p.next();
                }
                _ => return Err(p.err("`<-`")),
            }
            let addr_of = |name: &str| addr_names.iter().position(|a| a == name);
            match p.peek() {
                Some(Tok::Int(_)) => {
                    let value = p.int()?;
                    let addr = addr_of(&lhs).ok_or_else(|| {
                        ParseError::Invalid(format!("store target {lhs} is not an address"))
                    })? as u32;
                    body.push(Instr::Write { addr, value });
                }
                Some(Tok::Ident(_)) => {
                    let rhs = p.ident("an address")?;
                    if addr_of(&lhs).is_some() {
                        return Err(ParseError::Invalid(format!(
                            "cannot load into address {lhs}"
                        )));
                    }
                    let addr = addr_of(&rhs).ok_or_else(|| {
                        ParseError::Invalid(format!("load source {rhs} is not an address"))
                    })? as u32;
                    body.push(Instr::Read { addr, reg: lhs });
                }
                _ => return Err(p.err("an integer or an address")),
            }
            if matches!(p.peek(), Some(Tok::Sym(';'))) {
                p.next();
            } else {
                break;
            }
        }
        p.expect_sym('}')?;
        let _ = matches!(p.peek(), Some(Tok::Sym(';'))) && p.next().is_some();
        threads.push(body);
    }

    p.expect_keyword("observable")?;
    p.expect_sym('?')?;
    let mut condition = Vec::new();
    loop {
        let reg = p.ident("a register")?;
        p.expect_sym('=')?;
        let v = p.int()?;
        condition.push((reg, v));
        if matches!(p.peek(), Some(Tok::Sym('&'))) {
            p.next();
        } else {
            break;
        }
    }
    let _ = matches!(p.peek(), Some(Tok::Sym(';'))) && p.next().is_some();

    let mut expected = BTreeMap::new();
    while matches!(p.peek(), Some(Tok::Ident(s)) if s == "expect") {
        p.expect_keyword("expect")?;
        let engine = match p.ident("an engine name")?.as_str() {
            "axiomatic" => Engine::Axiomatic,
            "tsolb" => Engine::TsoLb,
            other => {
                return Err(ParseError::Invalid(format!("unknown engine {other}")));
            }
        };
        let verdict = match p.ident("a verdict")?.as_str() {
            "observable" => Verdict::Observable,
            "not-observable" => Verdict::NotObservable,
            other => {
                return Err(ParseError::Invalid(format!("unknown verdict {other}")));
            }
        };
        expected.insert(engine, verdict);
        let _ = matches!(p.peek(), Some(Tok::Sym(';'))) && p.next().is_some();
    }
    if p.peek().is_some() {
        return Err(p.err("end of input"));
    }

    let test = LitmusTest {
        name,
        addr_names,
        init,
        thread_names,
        threads,
        condition,
        expected,
    };
    test.validate()?;
    Ok(test)
}

/// A witness for an observable verdict.
#[derive(Debug)]
pub enum Witness {
    /// The satisfying axiomatic candidate execution.
    Execution(mcm::Execution),
    /// A TSO-LB trace reaching the condition.
    Trace(LbTrace),
}

#[derive(Debug)]
pub struct EvalResult {
    pub engine: Engine,
    pub verdict: Verdict,
    pub witness: Option<Witness>,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Enumerate(#[from] mcm::EnumerateError),
    #[error(transparent)]
    Run(#[from] tsolb::LitmusRunError),
}

/// Runs a litmus test under one engine.
pub fn evaluate(test: &LitmusTest, engine: Engine) -> Result<EvalResult, EvalError> {
    match engine {
        Engine::Axiomatic => {
            let e: Enumeration =
                mcm::enumerate_candidates(test, mcm::DEFAULT_CANDIDATE_BUDGET)?;
            let (verdict, witness) = match e.witness {
                Some(i) => (
                    Verdict::Observable,
                    Some(Witness::Execution(e.candidates[i].execution.clone())),
                ),
                None => (Verdict::NotObservable, None),
            };
            Ok(EvalResult {
                engine,
                verdict,
                witness,
            })
        }
        Engine::TsoLb => {
            let run = tsolb::run_litmus_exhaustive(test, tsolb::DEFAULT_LITMUS_STATE_BUDGET)?;
            let regs = test.registers();
            let matches = |obs: &Vec<u8>| {
                test.condition.iter().all(|(reg, v)| {
                    let i = regs.iter().position(|r| r == reg).unwrap();
                    obs[i] as u32 == *v
                })
            };
            let hit = run.observations.iter().find(|o| matches(o));
            match hit {
                Some(obs) => Ok(EvalResult {
                    engine,
                    verdict: Verdict::Observable,
                    witness: run.witnesses.get(obs).cloned().map(Witness::Trace),
                }),
                None => Ok(EvalResult {
                    engine,
                    verdict: Verdict::NotObservable,
                    witness: None,
                }),
            }
        }
    }
}

/// Differential classification of the two engines' verdicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    /// Both engines agree.
    Consistent,
    /// The operational model exhibits a behaviour the axioms forbid.
    SoundnessBug,
    /// The axioms allow a behaviour the operational model never exhibits.
    StrictnessGap,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Classification::Consistent => write!(f, "CONSISTENT"),
            Classification::SoundnessBug => write!(f, "SOUNDNESS-BUG"),
            Classification::StrictnessGap => write!(f, "STRICTNESS-GAP"),
        }
    }
}

#[derive(Debug)]
pub struct Comparison {
    pub axiomatic: EvalResult,
    pub tsolb: EvalResult,
    pub classification: Classification,
}

/// Runs both engines and classifies the pair of verdicts.
pub fn compare(test: &LitmusTest) -> Result<Comparison, EvalError> {
    let axiomatic = evaluate(test, Engine::Axiomatic)?;
    let tsolb = evaluate(test, Engine::TsoLb)?;
    let classification = match (axiomatic.verdict, tsolb.verdict) {
        (a, t) if a == t => Classification::Consistent,
        (Verdict::NotObservable, Verdict::Observable) => Classification::SoundnessBug,
        _ => Classification::StrictnessGap,
    };
    Ok(Comparison {
        axiomatic,
        tsolb,
        classification,
    })
}

/// Parameters for random test generation.
#[derive(Debug, Clone, Copy)]
pub struct GenParams {
    pub threads: usize,
    pub instrs_per_thread: usize,
    pub addrs: usize,
    pub max_value: u32,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            threads: 2,
            instrs_per_thread: 3,
            addrs: 2,
            max_value: 1,
        }
    }
}

/// Generates a random litmus test, deterministic per seed. The condition
/// constrains a random nonempty subset of the registers.
pub fn generate_random(seed: u64, params: GenParams) -> LitmusTest {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let addr_names: Vec<String> = (0..params.addrs).map(|i| format!("x{i}")).collect();
    let mut threads = Vec::new();
    let mut thread_names = Vec::new();
    let mut reg_counter = 0usize;
    let mut regs = Vec::new();
    for t in 0..params.threads {
        thread_names.push(format!("P{}", t + 1));
        let mut body = Vec::new();
        for _ in 0..params.instrs_per_thread {
            let addr = rng.gen_range(0..params.addrs) as u32;
            if rng.gen_bool(0.5) {
                body.push(Instr::Write {
                    addr,
                    value: rng.gen_range(1..=params.max_value),
                });
            } else {
                reg_counter += 1;
                let reg = format!("r{reg_counter}");
                regs.push(reg.clone());
                body.push(Instr::Read { addr, reg });
            }
        }
        threads.push(body);
    }
    // A test needs at least one read to have a condition; force one if the
    // coin flips produced none.
    if regs.is_empty() {
        let reg = "r1".to_string();
        regs.push(reg.clone());
        threads[0].push(Instr::Read { addr: 0, reg });
    }
    let mut condition = Vec::new();
    for reg in &regs {
        if condition.is_empty() || rng.gen_bool(0.6) {
            condition.push((reg.clone(), rng.gen_range(0..=params.max_value)));
        }
    }
    LitmusTest {
        name: format!("rand-{seed}"),
        addr_names,
        init: vec![0; params.addrs],
        thread_names,
        threads,
        condition,
        expected: BTreeMap::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub const SB: &str = "\
test sb;
init x=0 y=0;
thread P1 { x <- 1; r1 <- y };
thread P2 { y <- 1; r2 <- x };
observable? r1=0 & r2=0;
";

    #[test]
    fn parse_store_buffering() {
        let t = parse(SB).unwrap();
        assert_eq!(t.name, "sb");
        assert_eq!(t.addr_names, vec!["x", "y"]);
        assert_eq!(t.threads.len(), 2);
        assert_eq!(
            t.threads[0],
            vec![
                Instr::Write { addr: 0, value: 1 },
                Instr::Read {
                    addr: 1,
                    reg: "r1".into()
                }
            ]
        );
        assert_eq!(t.condition, vec![("r1".into(), 0), ("r2".into(), 0)]);
    }

    #[test]
    fn display_round_trips() {
        let t = parse(SB).unwrap();
        let t2 = parse(&t.to_string()).unwrap();
        assert_eq!(t, t2);
    }

    #[test]
    fn fence_rejected() {
        let src = "test f; init x=0; thread P1 { mfence; r1 <- x }; observable? r1=0;";
        assert_eq!(parse(src).unwrap_err(), ParseError::FenceUnsupported(1));
    }

    #[test]
    fn duplicate_register_rejected() {
        let src = "test d; init x=0; thread P1 { r1 <- x; r1 <- x }; observable? r1=0;";
        assert!(matches!(parse(src).unwrap_err(), ParseError::Invalid(_)));
    }

    #[test]
    fn unknown_condition_register_rejected() {
        let src = "test u; init x=0; thread P1 { r1 <- x }; observable? r9=0;";
        assert!(matches!(parse(src).unwrap_err(), ParseError::Invalid(_)));
    }

    #[test]
    fn parse_expectations() {
        let src = "test e; init x=0; thread P1 { r1 <- x }; observable? r1=1;\n\
                   expect axiomatic not-observable;\nexpect tsolb not-observable;";
        let t = parse(src).unwrap();
        assert_eq!(t.expected[&Engine::Axiomatic], Verdict::NotObservable);
        assert_eq!(t.expected[&Engine::TsoLb], Verdict::NotObservable);
    }

    #[test]
    fn single_thread_both_engines() {
        let t = LitmusTest::single_thread_store_load();
        let a = evaluate(&t, Engine::Axiomatic).unwrap();
        let o = evaluate(&t, Engine::TsoLb).unwrap();
        assert_eq!(a.verdict, Verdict::Observable);
        assert_eq!(o.verdict, Verdict::Observable);
    }

    #[test]
    fn store_buffering_observable_and_consistent() {
        let t = parse(SB).unwrap();
        let c = compare(&t).unwrap();
        assert_eq!(c.axiomatic.verdict, Verdict::Observable);
        assert_eq!(c.tsolb.verdict, Verdict::Observable);
        assert_eq!(c.classification, Classification::Consistent);
    }

    #[test]
    fn generator_is_deterministic_per_seed() {
        let a = generate_random(42, GenParams::default());
        let b = generate_random(42, GenParams::default());
        let c = generate_random(43, GenParams::default());
        assert_eq!(a, b);
        assert_ne!(a, c);
        a.validate().unwrap();
        c.validate().unwrap();
    }

    #[test]
    fn generated_tests_parse_back() {
        for seed in 0..20 {
            let t = generate_random(seed, GenParams::default());
            let t2 = parse(&t.to_string()).unwrap();
            assert_eq!(t, t2);
        }
    }
}
