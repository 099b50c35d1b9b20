//! The basic TSO-CC lazy coherence protocol (no timestamps) as a
//! guarded-command model: per-processor caches, a directory with an owner
//! pointer, and a bounded unordered per-destination network.
//!
//! Lazy coherence means writes do not eagerly invalidate remote shared
//! copies; instead caches self-invalidate their own shared lines whenever a
//! data grant arrives, so stale copies disappear at the next miss. SWMR is
//! violated by design: an owner in M can coexist with stale S copies.
//!
//! Every observable action (read and write completions) drives the embedded
//! TSO-LB shadow state through the refinement operations; a failed
//! `tso_verify` sets the `fail` field, which the Match invariant reports.
//! The ruleset is normative for this artifact; its correctness criterion is
//! deadlock freedom plus the Match refinement check at (2,2,2).

use std::fmt::Write as _;

use thiserror::Error;

use crate::mc::{Invariant, Model, Rule, RuleInstance, StateCodec};
use crate::refinement::{tso_store, tso_store_abs, tso_verify, RefinementFailure};
use crate::tsolb::{initial_state, LbConfig, TsoLbState};

pub type Val = u8;

/// A network endpoint. `Other` is the abstract cache of the parameterized
/// model; it has no buffer, so messages to it are discarded on send.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Node {
    Proc(usize),
    Dir,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CacheState {
    I,
    S,
    E,
    M,
    /// Read miss outstanding (GetS sent, awaiting DataS/DataE).
    WS,
    /// Write miss outstanding (GetX sent, awaiting DataX).
    WX,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CacheLine {
    pub state: CacheState,
    pub value: Val,
    pub pending_write: Option<Val>,
}

impl CacheLine {
    fn invalid() -> Self {
        CacheLine {
            state: CacheState::I,
            value: 0,
            pending_write: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DirState {
    I,
    S,
    E,
    /// Exclusive grant outstanding, awaiting Ack from the new owner.
    WE,
    /// Shared grant outstanding, awaiting Ack from the requester.
    WA,
    /// Downgrade outstanding, awaiting Data from the owner.
    WSd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DirEntry {
    pub state: DirState,
    pub value: Val,
    /// Present iff state is E, WE or WSd.
    pub owner: Option<Node>,
    /// Outstanding requester (WSd) or acker (WA); present iff WSd or WA.
    pub pending: Option<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MsgType {
    GetS,
    GetX,
    DataS,
    DataE,
    DataX,
    Data,
    Ack,
    FwdS,
    FwdX,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Message {
    pub mtype: MsgType,
    pub src: Node,
    pub addr: usize,
    pub value: Option<Val>,
    pub fwd_to: Option<Node>,
}

impl Message {
    pub fn new(mtype: MsgType, src: Node, addr: usize) -> Self {
        Message {
            mtype,
            src,
            addr,
            value: None,
            fwd_to: None,
        }
    }

    pub fn with_value(mut self, v: Val) -> Self {
        self.value = Some(v);
        self
    }

    pub fn with_fwd(mut self, n: Node) -> Self {
        self.fwd_to = Some(n);
        self
    }

    pub fn is_grant(&self) -> bool {
        matches!(self.mtype, MsgType::DataS | MsgType::DataE | MsgType::DataX)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProtocolConfig {
    pub procs: usize,
    pub addrs: usize,
    pub vals: u8,
    pub net_max: usize,
}

impl ProtocolConfig {
    pub fn new(procs: usize, addrs: usize, vals: u8) -> Result<Self, ConfigError> {
        if procs < 1 || addrs < 1 || vals < 2 {
            return Err(ConfigError::Invalid);
        }
        Ok(ProtocolConfig {
            procs,
            addrs,
            vals,
            net_max: 2 * procs,
        })
    }

    pub fn with_net_max(mut self, n: usize) -> Self {
        self.net_max = n;
        self
    }

    pub fn lb(&self) -> LbConfig {
        LbConfig::new(self.procs, self.addrs, self.vals).expect("validated")
    }

    pub fn values(&self) -> impl Iterator<Item = Val> {
        0..self.vals
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("need at least 1 processor, 1 address and 2 values")]
    Invalid,
}

/// Deliberate protocol defects for negative-control runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mutation {
    #[default]
    None,
    /// Data grants no longer self-invalidate the cache's other S lines.
    SkipSelfInvalidation,
    /// The directory serves GetS/GetX even in transient WE/WA states.
    NoDirStall,
    /// The Write rule in state E skips its shadow store.
    DropTsoStoreWriteE,
}

/// The explored state: caches, directory, network, shadow, and the Match
/// failure flag (`None` everywhere is the refinement claim).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ProtocolState {
    pub caches: Vec<Vec<CacheLine>>,
    pub dir: Vec<DirEntry>,
    /// Per-destination buffers: index p for cache p, index `procs` for the
    /// directory. Kept sorted so equal multisets encode identically.
    pub net: Vec<Vec<Message>>,
    pub shadow: TsoLbState,
    pub fail: Option<RefinementFailure>,
}

impl ProtocolState {
    pub fn initial(cfg: ProtocolConfig) -> Self {
        ProtocolState {
            caches: vec![vec![CacheLine::invalid(); cfg.addrs]; cfg.procs],
            dir: vec![
                DirEntry {
                    state: DirState::I,
                    value: 0,
                    owner: None,
                    pending: None,
                };
                cfg.addrs
            ],
            net: vec![Vec::new(); cfg.procs + 1],
            shadow: initial_state(cfg.lb()),
            fail: None,
        }
    }

    pub fn dir_index(cfg: ProtocolConfig) -> usize {
        cfg.procs
    }

    fn dest_index(cfg: ProtocolConfig, n: Node) -> Option<usize> {
        match n {
            Node::Proc(p) => Some(p),
            Node::Dir => Some(cfg.procs),
            Node::Other => None,
        }
    }

    /// Room for one more message at `dest`; messages to Other always fit.
    pub fn has_space(&self, cfg: ProtocolConfig, dest: Node) -> bool {
        match Self::dest_index(cfg, dest) {
            Some(i) => self.net[i].len() < cfg.net_max,
            None => true,
        }
    }

    /// Buffers a message, keeping the buffer sorted. Messages to Other are
    /// discarded (the abstract cache generates its own responses).
    pub fn send(&mut self, cfg: ProtocolConfig, dest: Node, m: Message) {
        if let Some(i) = Self::dest_index(cfg, dest) {
            let pos = self.net[i].partition_point(|x| x <= &m);
            self.net[i].insert(pos, m);
        }
    }

    pub fn find_msg(
        &self,
        cfg: ProtocolConfig,
        dest: Node,
        pred: impl Fn(&Message) -> bool,
    ) -> Option<&Message> {
        let i = Self::dest_index(cfg, dest)?;
        self.net[i].iter().find(|m| pred(m))
    }

    fn take_msg(
        &mut self,
        cfg: ProtocolConfig,
        dest: Node,
        pred: impl Fn(&Message) -> bool,
    ) -> Message {
        let i = Self::dest_index(cfg, dest).expect("concrete destination");
        let pos = self.net[i]
            .iter()
            .position(pred)
            .expect("guard checked presence");
        self.net[i].remove(pos)
    }

    /// Self-invalidation: every line of `p` other than `a` in state S
    /// becomes I.
    fn self_invalidate_others(&mut self, p: usize, a: usize) {
        for (line_addr, line) in self.caches[p].iter_mut().enumerate() {
            if line_addr != a && line.state == CacheState::S {
                *line = CacheLine::invalid();
            }
        }
    }

    /// Runs the shadow read check and records a Match failure if it fails.
    fn shadow_verify(&mut self, p: usize, a: usize, expected: Val) {
        let (ok, next) = tso_verify(&self.shadow, p, a, expected);
        if ok {
            self.shadow = next;
        } else if self.fail.is_none() {
            self.fail = Some(RefinementFailure {
                p,
                a,
                expected,
                local: self.shadow.local[p].clone(),
                global: self.shadow.global.clone(),
            });
        }
    }

    pub fn dump(&self, cfg: ProtocolConfig) -> String {
        let mut out = String::new();
        for p in 0..cfg.procs {
            for a in 0..cfg.addrs {
                let l = &self.caches[p][a];
                write!(out, "c{p}.{a}: {:?} v={}", l.state, l.value).unwrap();
                if let Some(w) = l.pending_write {
                    write!(out, " pending_write={w}").unwrap();
                }
                out.push('\n');
            }
        }
        for a in 0..cfg.addrs {
            let d = &self.dir[a];
            write!(out, "dir.{a}: {:?} v={}", d.state, d.value).unwrap();
            if let Some(o) = d.owner {
                write!(out, " owner={o:?}").unwrap();
            }
            if let Some(q) = d.pending {
                write!(out, " pending={q:?}").unwrap();
            }
            out.push('\n');
        }
        for (i, buf) in self.net.iter().enumerate() {
            let dest = if i == cfg.procs {
                "dir".to_string()
            } else {
                format!("c{i}")
            };
            for m in buf {
                write!(out, "net[{dest}]: {:?} src={:?} addr={}", m.mtype, m.src, m.addr).unwrap();
                if let Some(v) = m.value {
                    write!(out, " v={v}").unwrap();
                }
                if let Some(t) = m.fwd_to {
                    write!(out, " fwd_to={t:?}").unwrap();
                }
                out.push('\n');
            }
        }
        writeln!(
            out,
            "shadow: local={:?} global={:?}",
            self.shadow.local, self.shadow.global
        )
        .unwrap();
        if let Some(f) = &self.fail {
            writeln!(out, "MATCH FAILURE: {}", f.describe()).unwrap();
        }
        out
    }
}

fn encode_node(n: Option<Node>, out: &mut Vec<u8>) {
    match n {
        None => out.push(0xFF),
        Some(Node::Dir) => out.push(0xFE),
        Some(Node::Other) => out.push(0xFD),
        Some(Node::Proc(p)) => out.push(p as u8),
    }
}

impl StateCodec for ProtocolState {
    fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(96);
        for row in &self.caches {
            for l in row {
                out.push(l.state as u8);
                out.push(l.value);
                out.push(l.pending_write.map_or(0xFF, |v| v));
                out.push(l.pending_write.is_some() as u8);
            }
        }
        for d in &self.dir {
            out.push(d.state as u8);
            out.push(d.value);
            encode_node(d.owner, &mut out);
            encode_node(d.pending, &mut out);
        }
        for buf in &self.net {
            out.push(buf.len() as u8);
            for m in buf {
                out.push(m.mtype as u8);
                encode_node(Some(m.src), &mut out);
                out.push(m.addr as u8);
                out.push(m.value.map_or(0xFF, |v| v));
                out.push(m.value.is_some() as u8);
                encode_node(m.fwd_to, &mut out);
            }
        }
        for row in &self.shadow.local {
            out.extend_from_slice(row);
        }
        out.extend_from_slice(&self.shadow.global);
        match &self.fail {
            None => out.push(0),
            Some(f) => {
                out.push(1);
                out.push(f.p as u8);
                out.push(f.a as u8);
                out.push(f.expected);
            }
        }
        out
    }
}

/// Applies a processor relabelling: position `i` of the result takes
/// processor `perm[i]`'s components, and processor ids inside messages and
/// directory fields are renamed accordingly.
pub fn permute_procs(s: &ProtocolState, cfg: ProtocolConfig, perm: &[usize]) -> ProtocolState {
    let mut inv = vec![0usize; perm.len()];
    for (i, &src) in perm.iter().enumerate() {
        inv[src] = i;
    }
    let rename = |n: Node| match n {
        Node::Proc(p) => Node::Proc(inv[p]),
        other => other,
    };
    let mut out = s.clone();
    for i in 0..cfg.procs {
        out.caches[i] = s.caches[perm[i]].clone();
        out.shadow.local[i] = s.shadow.local[perm[i]].clone();
        let mut buf: Vec<Message> = s.net[perm[i]]
            .iter()
            .map(|m| {
                let mut m = *m;
                m.src = rename(m.src);
                m.fwd_to = m.fwd_to.map(rename);
                m
            })
            .collect();
        buf.sort();
        out.net[i] = buf;
    }
    let mut dir_buf: Vec<Message> = s.net[cfg.procs]
        .iter()
        .map(|m| {
            let mut m = *m;
            m.src = rename(m.src);
            m.fwd_to = m.fwd_to.map(rename);
            m
        })
        .collect();
    dir_buf.sort();
    out.net[cfg.procs] = dir_buf;
    for d in out.dir.iter_mut() {
        d.owner = d.owner.map(rename);
        d.pending = d.pending.map(rename);
    }
    if let Some(f) = &mut out.fail {
        f.p = inv[f.p];
        f.local = s.shadow.local[perm[inv[f.p]]].clone();
    }
    out
}

type PRule = Rule<ProtocolState, ()>;
type PInstance = RuleInstance<ProtocolState, ()>;

fn instance(
    binding: String,
    guard: impl Fn(&ProtocolState) -> bool + Send + Sync + 'static,
    effect: impl Fn(&ProtocolState) -> ProtocolState + Send + Sync + 'static,
) -> PInstance {
    RuleInstance {
        binding,
        guard: Box::new(guard),
        effect: Box::new(effect),
        label: None,
    }
}

/// How a buffered message relates to its destination's current state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Handling {
    /// A receive rule consumes it now (possibly waiting for buffer space).
    Ready,
    /// Legitimately deferred (directory stalls requests in transient states).
    Stall,
    /// No state will ever consume it: a protocol error.
    Error,
}

/// Classifies a buffered message against the destination state. Used by the
/// protocol-error invariant, which is distinct from deadlock: a deadlock is
/// no rule enabled anywhere, an Error is a message no rule will ever accept.
pub fn classify_message(s: &ProtocolState, cfg: ProtocolConfig, dest: usize, m: &Message) -> Handling {
    if dest == cfg.procs {
        let d = &s.dir[m.addr];
        match m.mtype {
            MsgType::GetS | MsgType::GetX => match d.state {
                DirState::I | DirState::S | DirState::E => Handling::Ready,
                _ => Handling::Stall,
            },
            MsgType::Data => {
                if d.state == DirState::WSd {
                    Handling::Ready
                } else {
                    Handling::Error
                }
            }
            MsgType::Ack => match d.state {
                DirState::WE | DirState::WA => Handling::Ready,
                _ => Handling::Error,
            },
            _ => Handling::Error,
        }
    } else {
        let line = &s.caches[dest][m.addr];
        match m.mtype {
            MsgType::DataS | MsgType::DataE => {
                if line.state == CacheState::WS {
                    Handling::Ready
                } else {
                    Handling::Error
                }
            }
            MsgType::DataX => {
                if line.state == CacheState::WX {
                    Handling::Ready
                } else {
                    Handling::Error
                }
            }
            MsgType::FwdS | MsgType::FwdX => match line.state {
                CacheState::E | CacheState::M => Handling::Ready,
                _ => Handling::Error,
            },
            _ => Handling::Error,
        }
    }
}

/// Builds the concrete model.
pub fn build_model(cfg: ProtocolConfig) -> Model<ProtocolState, ()> {
    build_model_mutated(cfg, Mutation::None)
}

/// Builds the model with an optional deliberate defect (negative controls).
pub fn build_model_mutated(cfg: ProtocolConfig, mutation: Mutation) -> Model<ProtocolState, ()> {
    let mut rules: Vec<PRule> = Vec::new();

    // --- Processor rules -------------------------------------------------
    let mut read_hit = Vec::new();
    let mut read_miss = Vec::new();
    let mut write_hit = Vec::new();
    let mut write_miss = Vec::new();
    for p in 0..cfg.procs {
        for a in 0..cfg.addrs {
            // Read hit: S (the below-MAX branch of the access counter,
            // abstracted to nondeterminism), E, or M. The read completes
            // here, so the shadow check runs here.
            read_hit.push(instance(
                format!("p={p} a={a}"),
                move |s| {
                    matches!(
                        s.caches[p][a].state,
                        CacheState::S | CacheState::E | CacheState::M
                    )
                },
                move |s| {
                    let mut n = s.clone();
                    let v = n.caches[p][a].value;
                    n.shadow_verify(p, a, v);
                    n
                },
            ));
            // Read miss: I, or S at the access-counter MAX (copy dropped and
            // refetched).
            read_miss.push(instance(
                format!("p={p} a={a}"),
                move |s| {
                    matches!(s.caches[p][a].state, CacheState::I | CacheState::S)
                        && s.has_space(cfg, Node::Dir)
                },
                move |s| {
                    let mut n = s.clone();
                    n.caches[p][a] = CacheLine {
                        state: CacheState::WS,
                        value: 0,
                        pending_write: None,
                    };
                    n.send(cfg, Node::Dir, Message::new(MsgType::GetS, Node::Proc(p), a));
                    n
                },
            ));
            for v in cfg.values() {
                // Write hit: E -> M (first write) or M -> M.
                write_hit.push(instance(
                    format!("p={p} a={a} v={v}"),
                    move |s| matches!(s.caches[p][a].state, CacheState::E | CacheState::M),
                    move |s| {
                        let mut n = s.clone();
                        let was_e = n.caches[p][a].state == CacheState::E;
                        n.caches[p][a].state = CacheState::M;
                        n.caches[p][a].value = v;
                        if !(mutation == Mutation::DropTsoStoreWriteE && was_e) {
                            n.shadow = tso_store(&n.shadow, p, a, v);
                        }
                        n
                    },
                ));
                // Write miss: I or S; the value waits in the line until the
                // exclusive grant arrives.
                write_miss.push(instance(
                    format!("p={p} a={a} v={v}"),
                    move |s| {
                        matches!(s.caches[p][a].state, CacheState::I | CacheState::S)
                            && s.has_space(cfg, Node::Dir)
                    },
                    move |s| {
                        let mut n = s.clone();
                        n.caches[p][a] = CacheLine {
                            state: CacheState::WX,
                            value: 0,
                            pending_write: Some(v),
                        };
                        n.send(cfg, Node::Dir, Message::new(MsgType::GetX, Node::Proc(p), a));
                        n
                    },
                ));
            }
        }
    }
    rules.push(Rule {
        name: "read-hit".into(),
        instances: read_hit,
    });
    rules.push(Rule {
        name: "read-miss".into(),
        instances: read_miss,
    });
    rules.push(Rule {
        name: "write-hit".into(),
        instances: write_hit,
    });
    rules.push(Rule {
        name: "write-miss".into(),
        instances: write_miss,
    });

    // --- Cache receive rules ---------------------------------------------
    let mut recv_data_s = Vec::new();
    let mut recv_data_e = Vec::new();
    let mut recv_data_x = Vec::new();
    let mut recv_fwd_s = Vec::new();
    let mut recv_fwd_x = Vec::new();
    for p in 0..cfg.procs {
        for a in 0..cfg.addrs {
            for v in cfg.values() {
                let match_data = move |mt: MsgType| {
                    move |m: &Message| m.mtype == mt && m.addr == a && m.value == Some(v)
                };
                // The read completes at grant receipt: install the value,
                // acknowledge, self-invalidate other S lines, shadow-check.
                recv_data_s.push(instance(
                    format!("p={p} a={a} v={v}"),
                    move |s| {
                        s.caches[p][a].state == CacheState::WS
                            && s.find_msg(cfg, Node::Proc(p), match_data(MsgType::DataS)).is_some()
                            && s.has_space(cfg, Node::Dir)
                    },
                    move |s| {
                        let mut n = s.clone();
                        n.take_msg(cfg, Node::Proc(p), match_data(MsgType::DataS));
                        n.caches[p][a] = CacheLine {
                            state: CacheState::S,
                            value: v,
                            pending_write: None,
                        };
                        n.send(cfg, Node::Dir, Message::new(MsgType::Ack, Node::Proc(p), a));
                        if mutation != Mutation::SkipSelfInvalidation {
                            n.self_invalidate_others(p, a);
                        }
                        n.shadow_verify(p, a, v);
                        n
                    },
                ));
                recv_data_e.push(instance(
                    format!("p={p} a={a} v={v}"),
                    move |s| {
                        s.caches[p][a].state == CacheState::WS
                            && s.find_msg(cfg, Node::Proc(p), match_data(MsgType::DataE)).is_some()
                            && s.has_space(cfg, Node::Dir)
                    },
                    move |s| {
                        let mut n = s.clone();
                        n.take_msg(cfg, Node::Proc(p), match_data(MsgType::DataE));
                        n.caches[p][a] = CacheLine {
                            state: CacheState::E,
                            value: v,
                            pending_write: None,
                        };
                        n.send(cfg, Node::Dir, Message::new(MsgType::Ack, Node::Proc(p), a));
                        if mutation != Mutation::SkipSelfInvalidation {
                            n.self_invalidate_others(p, a);
                        }
                        n.shadow_verify(p, a, v);
                        n
                    },
                ));
                // The write completes here: the pending value overwrites the
                // granted one.
                recv_data_x.push(instance(
                    format!("p={p} a={a} v={v}"),
                    move |s| {
                        s.caches[p][a].state == CacheState::WX
                            && s.find_msg(cfg, Node::Proc(p), match_data(MsgType::DataX)).is_some()
                            && s.has_space(cfg, Node::Dir)
                    },
                    move |s| {
                        let mut n = s.clone();
                        n.take_msg(cfg, Node::Proc(p), match_data(MsgType::DataX));
                        let w = n.caches[p][a].pending_write.expect("WX holds a value");
                        n.caches[p][a] = CacheLine {
                            state: CacheState::M,
                            value: w,
                            pending_write: None,
                        };
                        n.send(cfg, Node::Dir, Message::new(MsgType::Ack, Node::Proc(p), a));
                        if mutation != Mutation::SkipSelfInvalidation {
                            n.self_invalidate_others(p, a);
                        }
                        n.shadow = tso_store(&n.shadow, p, a, w);
                        n
                    },
                ));
            }
            // Downgrade: the owner returns its value to the directory.
            let match_fwd =
                move |mt: MsgType| move |m: &Message| m.mtype == mt && m.addr == a;
            recv_fwd_s.push(instance(
                format!("p={p} a={a}"),
                move |s| {
                    matches!(s.caches[p][a].state, CacheState::E | CacheState::M)
                        && s.find_msg(cfg, Node::Proc(p), match_fwd(MsgType::FwdS)).is_some()
                        && s.has_space(cfg, Node::Dir)
                },
                move |s| {
                    let mut n = s.clone();
                    n.take_msg(cfg, Node::Proc(p), match_fwd(MsgType::FwdS));
                    let v = n.caches[p][a].value;
                    n.send(
                        cfg,
                        Node::Dir,
                        Message::new(MsgType::Data, Node::Proc(p), a).with_value(v),
                    );
                    n.caches[p][a].state = CacheState::S;
                    n
                },
            ));
            // Ownership transfer: the old owner hands its value straight to
            // the new one and invalidates itself.
            recv_fwd_x.push(instance(
                format!("p={p} a={a}"),
                move |s| {
                    if !matches!(s.caches[p][a].state, CacheState::E | CacheState::M) {
                        return false;
                    }
                    match s.find_msg(cfg, Node::Proc(p), match_fwd(MsgType::FwdX)) {
                        Some(m) => s.has_space(cfg, m.fwd_to.expect("FwdX carries a target")),
                        None => false,
                    }
                },
                move |s| {
                    let mut n = s.clone();
                    let m = n.take_msg(cfg, Node::Proc(p), match_fwd(MsgType::FwdX));
                    let target = m.fwd_to.expect("FwdX carries a target");
                    let v = n.caches[p][a].value;
                    n.send(
                        cfg,
                        target,
                        Message::new(MsgType::DataX, Node::Proc(p), a).with_value(v),
                    );
                    n.caches[p][a] = CacheLine::invalid();
                    n
                },
            ));
        }
    }
    rules.push(Rule {
        name: "cache-recv-data-s".into(),
        instances: recv_data_s,
    });
    rules.push(Rule {
        name: "cache-recv-data-e".into(),
        instances: recv_data_e,
    });
    rules.push(Rule {
        name: "cache-recv-data-x".into(),
        instances: recv_data_x,
    });
    rules.push(Rule {
        name: "cache-recv-fwd-s".into(),
        instances: recv_fwd_s,
    });
    rules.push(Rule {
        name: "cache-recv-fwd-x".into(),
        instances: recv_fwd_x,
    });

    // --- Directory rules ---------------------------------------------------
    for rule in dir_rules(cfg, mutation, (0..cfg.procs).map(Node::Proc).collect()) {
        rules.push(rule);
    }

    let mut invariants: Vec<Invariant<ProtocolState>> = Vec::new();
    invariants.push(Invariant {
        name: "match".into(),
        check: Box::new(|s: &ProtocolState| s.fail.is_none()),
    });
    invariants.push(Invariant {
        name: "dir-owner-coupling".into(),
        check: Box::new(move |s: &ProtocolState| dir_owner_coupling(s, cfg)),
    });
    invariants.push(Invariant {
        name: "single-grant".into(),
        check: Box::new(move |s: &ProtocolState| single_grant(s, cfg)),
    });
    invariants.push(Invariant {
        name: "net-bound".into(),
        check: Box::new(move |s: &ProtocolState| s.net.iter().all(|b| b.len() <= cfg.net_max)),
    });
    invariants.push(Invariant {
        name: "no-unhandled-message".into(),
        check: Box::new(move |s: &ProtocolState| no_unhandled_message(s, cfg)),
    });
    invariants.push(Invariant {
        name: "entry-shape".into(),
        check: Box::new(move |s: &ProtocolState| entry_shape(s, cfg)),
    });

    Model {
        name: format!(
            "tso-cc({},{},{},net={}){}",
            cfg.procs,
            cfg.addrs,
            cfg.vals,
            cfg.net_max,
            match mutation {
                Mutation::None => "".to_string(),
                m => format!(" mutated:{m:?}"),
            }
        ),
        initials: vec![ProtocolState::initial(cfg)],
        rules,
        invariants,
        dump_state: Box::new(move |s: &ProtocolState| s.dump(cfg)),
    }
}

/// Directory rule families. `requesters` is the set of nodes whose requests
/// the directory serves: the concrete processors, plus Other in the
/// parameterized model.
pub fn dir_rules(
    cfg: ProtocolConfig,
    mutation: Mutation,
    requesters: Vec<Node>,
) -> Vec<PRule> {
    let mut gets_i = Vec::new();
    let mut gets_s = Vec::new();
    let mut gets_e = Vec::new();
    let mut getx = Vec::new();
    let mut getx_e = Vec::new();
    let mut data = Vec::new();
    let mut ack_we = Vec::new();
    let mut ack_wa = Vec::new();

    let stall_open = move |d: DirState| {
        // The NoDirStall mutation lets transient states serve requests too.
        mutation == Mutation::NoDirStall && matches!(d, DirState::WE | DirState::WA)
    };

    for a in 0..cfg.addrs {
        for &req in &requesters {
            let match_req =
                move |mt: MsgType| move |m: &Message| m.mtype == mt && m.addr == a && m.src == req;
            // Unowned line: grant exclusive-clean so a first writer can use
            // the silent E -> M upgrade.
            gets_i.push(instance(
                format!("a={a} src={req:?}"),
                move |s| {
                    (s.dir[a].state == DirState::I || stall_open(s.dir[a].state))
                        && s.find_msg(cfg, Node::Dir, match_req(MsgType::GetS)).is_some()
                        && s.has_space(cfg, req)
                },
                move |s| {
                    let mut n = s.clone();
                    n.take_msg(cfg, Node::Dir, match_req(MsgType::GetS));
                    let v = n.dir[a].value;
                    n.send(cfg, req, Message::new(MsgType::DataE, Node::Dir, a).with_value(v));
                    n.dir[a].owner = Some(req);
                    n.dir[a].pending = None;
                    n.dir[a].state = DirState::WE;
                    n
                },
            ));
            gets_s.push(instance(
                format!("a={a} src={req:?}"),
                move |s| {
                    s.dir[a].state == DirState::S
                        && s.find_msg(cfg, Node::Dir, match_req(MsgType::GetS)).is_some()
                        && s.has_space(cfg, req)
                },
                move |s| {
                    let mut n = s.clone();
                    n.take_msg(cfg, Node::Dir, match_req(MsgType::GetS));
                    let v = n.dir[a].value;
                    n.send(cfg, req, Message::new(MsgType::DataS, Node::Dir, a).with_value(v));
                    n.dir[a].pending = Some(req);
                    n.dir[a].state = DirState::WA;
                    n
                },
            ));
            gets_e.push(instance(
                format!("a={a} src={req:?}"),
                move |s| {
                    s.dir[a].state == DirState::E
                        && s.find_msg(cfg, Node::Dir, match_req(MsgType::GetS)).is_some()
                        && s.has_space(cfg, s.dir[a].owner.expect("E has an owner"))
                },
                move |s| {
                    let mut n = s.clone();
                    n.take_msg(cfg, Node::Dir, match_req(MsgType::GetS));
                    let owner = n.dir[a].owner.expect("E has an owner");
                    n.send(cfg, owner, Message::new(MsgType::FwdS, Node::Dir, a).with_fwd(req));
                    n.dir[a].pending = Some(req);
                    n.dir[a].state = DirState::WSd;
                    n
                },
            ));
            getx.push(instance(
                format!("a={a} src={req:?}"),
                move |s| {
                    (matches!(s.dir[a].state, DirState::I | DirState::S)
                        || stall_open(s.dir[a].state))
                        && s.find_msg(cfg, Node::Dir, match_req(MsgType::GetX)).is_some()
                        && s.has_space(cfg, req)
                },
                move |s| {
                    let mut n = s.clone();
                    n.take_msg(cfg, Node::Dir, match_req(MsgType::GetX));
                    let v = n.dir[a].value;
                    n.send(cfg, req, Message::new(MsgType::DataX, Node::Dir, a).with_value(v));
                    n.dir[a].owner = Some(req);
                    n.dir[a].pending = None;
                    n.dir[a].state = DirState::WE;
                    n
                },
            ));
            getx_e.push(instance(
                format!("a={a} src={req:?}"),
                move |s| {
                    s.dir[a].state == DirState::E
                        && s.find_msg(cfg, Node::Dir, match_req(MsgType::GetX)).is_some()
                        && s.has_space(cfg, s.dir[a].owner.expect("E has an owner"))
                },
                move |s| {
                    let mut n = s.clone();
                    n.take_msg(cfg, Node::Dir, match_req(MsgType::GetX));
                    let old_owner = n.dir[a].owner.expect("E has an owner");
                    n.send(
                        cfg,
                        old_owner,
                        Message::new(MsgType::FwdX, Node::Dir, a).with_fwd(req),
                    );
                    n.dir[a].owner = Some(req);
                    n.dir[a].state = DirState::WE;
                    n
                },
            ));
        }
        // Data return from a downgraded owner. An abstract-owner Data is the
        // write of an unmodelled processor, so it lands in the shadow global
        // buffer via the abstract store.
        for v in cfg.values() {
            for src_is_other in [false, true] {
                if src_is_other && !requesters.contains(&Node::Other) {
                    continue;
                }
                let match_data = move |m: &Message| {
                    m.mtype == MsgType::Data
                        && m.addr == a
                        && m.value == Some(v)
                        && ((m.src == Node::Other) == src_is_other)
                };
                data.push(instance(
                    format!("a={a} v={v} other={src_is_other}"),
                    move |s| {
                        s.dir[a].state == DirState::WSd
                            && s.find_msg(cfg, Node::Dir, match_data).is_some()
                            && s.has_space(cfg, s.dir[a].pending.expect("WSd has a requester"))
                    },
                    move |s| {
                        let mut n = s.clone();
                        let m = n.take_msg(cfg, Node::Dir, match_data);
                        let req = n.dir[a].pending.expect("WSd has a requester");
                        n.dir[a].value = v;
                        n.send(cfg, req, Message::new(MsgType::DataS, Node::Dir, a).with_value(v));
                        n.dir[a].owner = None;
                        n.dir[a].state = DirState::WA;
                        if m.src == Node::Other {
                            n.shadow = tso_store_abs(&n.shadow, a, v);
                        }
                        n
                    },
                ));
            }
        }
        let match_ack = move |m: &Message| m.mtype == MsgType::Ack && m.addr == a;
        ack_we.push(instance(
            format!("a={a}"),
            move |s| {
                s.dir[a].state == DirState::WE
                    && s.find_msg(cfg, Node::Dir, match_ack).is_some()
            },
            move |s| {
                let mut n = s.clone();
                n.take_msg(cfg, Node::Dir, match_ack);
                n.dir[a].state = DirState::E;
                n
            },
        ));
        ack_wa.push(instance(
            format!("a={a}"),
            move |s| {
                s.dir[a].state == DirState::WA
                    && s.find_msg(cfg, Node::Dir, match_ack).is_some()
            },
            move |s| {
                let mut n = s.clone();
                n.take_msg(cfg, Node::Dir, match_ack);
                n.dir[a].pending = None;
                n.dir[a].state = DirState::S;
                n
            },
        ));
    }

    vec![
        Rule {
            name: "dir-recv-gets-i".into(),
            instances: gets_i,
        },
        Rule {
            name: "dir-recv-gets-s".into(),
            instances: gets_s,
        },
        Rule {
            name: "dir-recv-gets-e".into(),
            instances: gets_e,
        },
        Rule {
            name: "dir-recv-getx".into(),
            instances: getx,
        },
        Rule {
            name: "dir-recv-getx-e".into(),
            instances: getx_e,
        },
        Rule {
            name: "dir-recv-data".into(),
            instances: data,
        },
        Rule {
            name: "dir-recv-ack-we".into(),
            instances: ack_we,
        },
        Rule {
            name: "dir-recv-ack-wa".into(),
            instances: ack_wa,
        },
    ]
}

/// dir E implies the owner cache holds E or M; dir WE implies the grantee is
/// mid-transaction (WS/WX) or already installed (E/M). Abstract owners are
/// outside the concrete state and exempt.
pub fn dir_owner_coupling(s: &ProtocolState, cfg: ProtocolConfig) -> bool {
    for a in 0..cfg.addrs {
        let d = &s.dir[a];
        let owner_state = match d.owner {
            Some(Node::Proc(p)) => Some(s.caches[p][a].state),
            Some(Node::Other) => None,
            Some(Node::Dir) => return false,
            None => None,
        };
        match (d.state, owner_state) {
            (DirState::E, Some(st)) => {
                if !matches!(st, CacheState::E | CacheState::M) {
                    return false;
                }
            }
            (DirState::WE, Some(st)) => {
                if !matches!(
                    st,
                    CacheState::WS | CacheState::WX | CacheState::E | CacheState::M
                ) {
                    return false;
                }
            }
            _ => {}
        }
    }
    true
}

/// At most one DataS/DataE/DataX in flight per address, over all buffers.
pub fn single_grant(s: &ProtocolState, cfg: ProtocolConfig) -> bool {
    for a in 0..cfg.addrs {
        let grants: usize = s
            .net
            .iter()
            .map(|buf| buf.iter().filter(|m| m.is_grant() && m.addr == a).count())
            .sum();
        if grants > 1 {
            return false;
        }
    }
    true
}

/// No buffered message is permanently unreceivable.
pub fn no_unhandled_message(s: &ProtocolState, cfg: ProtocolConfig) -> bool {
    for dest in 0..=cfg.procs {
        for m in &s.net[dest] {
            if classify_message(s, cfg, dest, m) == Handling::Error {
                return false;
            }
        }
    }
    true
}

/// owner present iff dir state is E/WE/WSd; pending present iff WSd/WA;
/// pending_write present iff cache state is WX.
pub fn entry_shape(s: &ProtocolState, cfg: ProtocolConfig) -> bool {
    for a in 0..cfg.addrs {
        let d = &s.dir[a];
        let owner_expected = matches!(d.state, DirState::E | DirState::WE | DirState::WSd);
        if d.owner.is_some() != owner_expected {
            return false;
        }
        let pending_expected = matches!(d.state, DirState::WSd | DirState::WA);
        if d.pending.is_some() != pending_expected {
            return false;
        }
    }
    for p in 0..cfg.procs {
        for a in 0..cfg.addrs {
            let l = &s.caches[p][a];
            if l.pending_write.is_some() != (l.state == CacheState::WX) {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::mc::{explore, ExploreOptions};

    #[test]
    fn initial_state_shape() {
        let cfg = ProtocolConfig::new(2, 2, 2).unwrap();
        let s = ProtocolState::initial(cfg);
        assert_eq!(s.caches.len(), 2);
        assert_eq!(s.net.len(), 3);
        assert!(s.fail.is_none());
        assert!(dir_owner_coupling(&s, cfg));
        assert!(entry_shape(&s, cfg));
        assert_eq!(cfg.net_max, 4);
    }

    #[test]
    fn dump_mentions_cache_lines_and_dir() {
        let cfg = ProtocolConfig::new(1, 1, 2).unwrap();
        let s = ProtocolState::initial(cfg);
        let d = s.dump(cfg);
        assert!(d.contains("c0.0: I v=0"));
        assert!(d.contains("dir.0: I v=0"));
        assert!(d.contains("shadow:"));
    }

    #[test]
    fn encoding_is_injective_on_a_sample() {
        let cfg = ProtocolConfig::new(1, 1, 2).unwrap();
        let model = build_model(cfg);
        let opts = ExploreOptions {
            collect_states: true,
            ..Default::default()
        };
        let report = explore(&model, &opts).unwrap();
        assert!(report.ok(), "violation: {:?}", report.violation);
        let mut seen = BTreeSet::new();
        for s in &report.collected {
            assert!(seen.insert(s.encode()), "duplicate encoding");
        }
    }

    #[test]
    fn single_processor_model_passes() {
        let cfg = ProtocolConfig::new(1, 1, 2).unwrap();
        let model = build_model(cfg);
        let r1 = explore(&model, &ExploreOptions::default()).unwrap();
        assert!(r1.ok(), "violation: {:?}", r1.violation);
        let r2 = explore(&model, &ExploreOptions::default()).unwrap();
        assert_eq!(r1.stats.states, r2.stats.states, "deterministic state count");
        assert!(r1.stats.states > 1);
    }

    #[test]
    fn walkthrough_read_miss_grant_ack() {
        let cfg = ProtocolConfig::new(2, 1, 2).unwrap();
        let model = build_model(cfg);
        let s0 = ProtocolState::initial(cfg);
        let fire = |s: &ProtocolState, rule: &str, binding: &str| -> ProtocolState {
            let ri = model.rules.iter().position(|r| r.name == rule).unwrap();
            let inst = model.rules[ri]
                .instances
                .iter()
                .find(|i| i.binding == binding)
                .unwrap_or_else(|| panic!("no instance {binding} in {rule}"));
            assert!((inst.guard)(s), "{rule} [{binding}] not enabled");
            (inst.effect)(s)
        };
        let s1 = fire(&s0, "read-miss", "p=0 a=0");
        assert_eq!(s1.caches[0][0].state, CacheState::WS);
        let s2 = fire(&s1, "dir-recv-gets-i", "a=0 src=Proc(0)");
        assert_eq!(s2.dir[0].state, DirState::WE);
        assert_eq!(s2.dir[0].owner, Some(Node::Proc(0)));
        let s3 = fire(&s2, "cache-recv-data-e", "p=0 a=0 v=0");
        assert_eq!(s3.caches[0][0].state, CacheState::E);
        assert!(s3.fail.is_none(), "read of initial 0 verifies");
        let s4 = fire(&s3, "dir-recv-ack-we", "a=0");
        assert_eq!(s4.dir[0].state, DirState::E);
        assert!(dir_owner_coupling(&s4, cfg));
        // Write hit upgrades silently to M and hits the shadow.
        let s5 = fire(&s4, "write-hit", "p=0 a=0 v=1");
        assert_eq!(s5.caches[0][0].state, CacheState::M);
        assert_eq!(s5.shadow.global[0], 1);
        assert_eq!(s5.shadow.local[0][0], 1);
    }

    #[test]
    fn permute_procs_roundtrip_and_symmetry() {
        let cfg = ProtocolConfig::new(2, 1, 2).unwrap();
        let model = build_model(cfg);
        // Drive an asymmetric state: p0 requests.
        let ri = model.rules.iter().position(|r| r.name == "read-miss").unwrap();
        let inst = &model.rules[ri].instances[0];
        let s = (inst.effect)(&ProtocolState::initial(cfg));
        let swapped = permute_procs(&s, cfg, &[1, 0]);
        assert_ne!(s.encode(), swapped.encode());
        assert_eq!(permute_procs(&swapped, cfg, &[1, 0]).encode(), s.encode());
        // The swapped state must be the one where p1 requested.
        assert_eq!(swapped.caches[1][0].state, CacheState::WS);
        assert_eq!(
            swapped.net[cfg.procs][0].src,
            Node::Proc(1),
            "message sources renamed"
        );
    }
}
