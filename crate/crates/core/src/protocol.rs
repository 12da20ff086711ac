//! The pull-stream protocol at one interface: event categories, the normal
//! and early-terminated sequence generators, the concurrent variants, and the
//! six-invariant checker.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::events::{AnswerValue, Event, History, Payload, Port, RequestKind, StreamVar};
use crate::lang::Category;
use crate::order::{linearize, normalize, OrderError, OrderExpr};

/// The two ports of one interface: requests are initiated on `input`
/// (downstream), answers on `output` (upstream).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct InterfaceSpec {
    pub input: Port,
    pub output: Port,
    /// Prime level of the interface's stream variables and values.
    pub level: u8,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("interface ports must differ, both are `{0}`")]
    SamePorts(Port),
    #[error("r = {r} with n = {n}: {reason}")]
    Params { n: u32, r: u32, reason: &'static str },
    #[error("mode {0:?} is not available here")]
    Mode(Mode),
    #[error("event {position} (`{event}`): {message}")]
    Malformed {
        position: usize,
        event: Event,
        message: String,
    },
    #[error("trace does not follow either protocol shape: {0}")]
    Shape(String),
    #[error(transparent)]
    Order(#[from] OrderError),
}

impl InterfaceSpec {
    pub fn new(input: Port, output: Port, level: u8) -> Result<InterfaceSpec, ProtocolError> {
        if input == output {
            return Err(ProtocolError::SamePorts(input));
        }
        Ok(InterfaceSpec {
            input,
            output,
            level,
        })
    }

    /// `I`/`O` at level 0, as used in the protocol listings.
    pub fn io() -> InterfaceSpec {
        InterfaceSpec::new(Port::new("I"), Port::new("O"), 0).expect("distinct ports")
    }

    pub fn var(&self, i: u32) -> StreamVar {
        StreamVar::at(self.level, i)
    }

    pub fn ask(&self, i: u32) -> Event {
        Event::ask(Some(&self.input), self.var(i))
    }

    pub fn abort(&self, i: u32) -> Event {
        Event::abort(Some(&self.input), self.var(i))
    }

    pub fn error(&self, i: u32) -> Event {
        Event::error(Some(&self.input), None, self.var(i))
    }

    pub fn value(&self, i: u32) -> Event {
        Event::value(Some(&self.output), self.var(i))
    }

    pub fn done(&self, i: u32) -> Event {
        Event::done(Some(&self.output), self.var(i))
    }

    pub fn err(&self, i: u32) -> Event {
        Event::err(Some(&self.output), self.var(i))
    }

    pub fn terminate(&self, i: u32) -> OrderExpr {
        Category::Terminate.expr(Some(&self.input), &self.var(i))
    }

    pub fn terminated(&self, i: u32) -> OrderExpr {
        Category::Terminated.expr(Some(&self.output), &self.var(i))
    }

    fn owns(&self, e: &Event) -> bool {
        e.port
            .as_ref()
            .is_some_and(|p| *p == self.input || *p == self.output)
    }

    /// The events of `h` that belong to this interface.
    pub fn project(&self, h: &History) -> History {
        h.project(&[&self.input, &self.output])
    }
}

impl fmt::Display for InterfaceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.output, self.input)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Mode {
    Coroutine,
    ConcurrentInOrder,
    ConcurrentOutOfOrder,
}

/// `n` values available, `r` ask requests, `w` whether the last answer was
/// waited for before terminating.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct SequenceParams {
    pub n: u32,
    pub r: u32,
    pub w: bool,
    pub mode: Mode,
}

impl SequenceParams {
    pub fn new(n: u32, r: u32, w: bool, mode: Mode) -> Result<SequenceParams, ProtocolError> {
        if r > n + 1 {
            return Err(ProtocolError::Params {
                n,
                r,
                reason: "more than n + 1 asks is not a valid sequence",
            });
        }
        Ok(SequenceParams { n, r, w, mode })
    }

    pub fn normal(n: u32) -> SequenceParams {
        SequenceParams {
            n,
            r: n + 1,
            w: true,
            mode: Mode::Coroutine,
        }
    }

    pub fn early(n: u32, r: u32, w: bool) -> Result<SequenceParams, ProtocolError> {
        if r > n {
            return Err(ProtocolError::Params {
                n,
                r,
                reason: "early termination needs r =< n",
            });
        }
        Ok(SequenceParams {
            n,
            r,
            w,
            mode: Mode::Coroutine,
        })
    }

    pub fn with_mode(mut self, mode: Mode) -> SequenceParams {
        self.mode = mode;
        self
    }

    pub fn is_normal(&self) -> bool {
        self.r == self.n + 1
    }

    /// The partial order for these parameters in their mode.
    pub fn expr(&self, iface: &InterfaceSpec) -> Result<OrderExpr, ProtocolError> {
        match self.mode {
            Mode::Coroutine if self.is_normal() => Ok(normal_sequence(self.n, iface)),
            Mode::Coroutine => early_terminated_sequence(self.n, self.r, self.w, iface),
            _ => concurrent_sequence(self, iface),
        }
    }

    /// Every history described by [`SequenceParams::expr`].
    pub fn linearizations(&self, iface: &InterfaceSpec) -> Result<Vec<Vec<Event>>, ProtocolError> {
        let x = normalize(&self.expr(iface)?)?;
        let bound = x.events().len();
        Ok(linearize(&x, bound)?)
    }
}

/// `ask -> value` for `1..=n`, then `ask -> terminated` at `n + 1`.
pub fn normal_sequence(n: u32, iface: &InterfaceSpec) -> OrderExpr {
    let mut items = Vec::new();
    for i in 1..=n {
        items.push(OrderExpr::Event(iface.ask(i)));
        items.push(OrderExpr::Event(iface.value(i)));
    }
    items.push(OrderExpr::Event(iface.ask(n + 1)));
    items.push(iface.terminated(n + 1));
    OrderExpr::seq_all(items)
}

/// The early-termination recursion. When the last ask is not waited for, its
/// terminated answer is held back and placed between the terminate request
/// and that request's own answer.
pub fn early_terminated_sequence(
    n: u32,
    r: u32,
    w: bool,
    iface: &InterfaceSpec,
) -> Result<OrderExpr, ProtocolError> {
    SequenceParams::early(n, r, w)?;
    let mut items = Vec::new();
    let mut held = None;
    for i in 1..=r + 1 {
        if i + 1 <= r || (i == r && w) {
            items.push(OrderExpr::Event(iface.ask(i)));
            items.push(OrderExpr::Event(iface.value(i)));
        } else if i == r {
            items.push(OrderExpr::Event(iface.ask(i)));
            held = Some(iface.terminated(i));
        } else {
            items.push(iface.terminate(i));
            items.extend(held.take());
            items.push(iface.terminated(i));
        }
    }
    Ok(OrderExpr::seq_all(items))
}

enum Answer {
    Value,
    Done,
    Err,
}

fn all_choices(len: usize) -> impl Iterator<Item = Vec<bool>> {
    (0..1u32 << len).map(move |bits| (0..len).map(|k| bits & (1 << k) != 0).collect())
}

/// Concurrent asks with in-order or out-of-order answers. The result is a
/// choice over every concrete assignment of terminate/terminated kinds, each
/// branch a conjunction of ordering constraints.
pub fn concurrent_sequence(
    params: &SequenceParams,
    iface: &InterfaceSpec,
) -> Result<OrderExpr, ProtocolError> {
    let in_order = match params.mode {
        Mode::ConcurrentInOrder => true,
        Mode::ConcurrentOutOfOrder => false,
        Mode::Coroutine => return Err(ProtocolError::Mode(Mode::Coroutine)),
    };
    let answer = |i: u32, a: &Answer| match a {
        Answer::Value => iface.value(i),
        Answer::Done => iface.done(i),
        Answer::Err => iface.err(i),
    };
    let ev = |e: Event| OrderExpr::Event(e);
    let mut branches = Vec::new();
    if params.is_normal() {
        let n = params.n;
        for err in [false, true] {
            let last = if err { Answer::Err } else { Answer::Done };
            let answers: Vec<Event> = (1..=n + 1)
                .map(|i| answer(i, if i <= n { &Answer::Value } else { &last }))
                .collect();
            let mut parts = vec![OrderExpr::seq_all((1..=n + 1).map(|i| ev(iface.ask(i))))];
            for (k, a) in answers.iter().enumerate() {
                parts.push(OrderExpr::seq(ev(iface.ask(k as u32 + 1)), ev(a.clone())));
            }
            if in_order {
                parts.push(OrderExpr::seq_all(answers.iter().cloned().map(ev)));
            }
            branches.push(OrderExpr::and_all(parts));
        }
    } else {
        SequenceParams::early(params.n, params.r, params.w)?;
        let r = params.r;
        let ks: Vec<u32> = if r == 0 {
            vec![0]
        } else if params.w {
            vec![r]
        } else {
            (0..r).collect()
        };
        for k in ks {
            for error_req in [false, true] {
                let q = if error_req { iface.error(r + 1) } else { iface.abort(r + 1) };
                for kinds in all_choices((r + 1 - k) as usize) {
                    let answers: Vec<Event> = (1..=r + 1)
                        .map(|i| {
                            if i <= k {
                                answer(i, &Answer::Value)
                            } else if kinds[(i - k - 1) as usize] {
                                answer(i, &Answer::Err)
                            } else {
                                answer(i, &Answer::Done)
                            }
                        })
                        .collect();
                    let mut requests: Vec<OrderExpr> = (1..=r).map(|i| ev(iface.ask(i))).collect();
                    requests.push(ev(q.clone()));
                    let mut parts = vec![OrderExpr::seq_all(requests.clone())];
                    for (idx, a) in answers.iter().enumerate() {
                        let i = idx as u32 + 1;
                        parts.push(OrderExpr::seq(requests[idx].clone(), ev(a.clone())));
                        if i <= k {
                            parts.push(OrderExpr::seq(ev(a.clone()), ev(q.clone())));
                        } else if i <= r {
                            parts.push(OrderExpr::seq(ev(q.clone()), ev(a.clone())));
                        }
                    }
                    if in_order {
                        parts.push(OrderExpr::seq_all(answers.iter().cloned().map(ev)));
                    }
                    branches.push(OrderExpr::and_all(parts));
                }
            }
        }
    }
    Ok(OrderExpr::or_all(branches))
}

/// Knobs for [`check`] and [`Monitor`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CheckOptions {
    /// The trace is complete; "eventually" invariants become decidable.
    pub finite: bool,
    pub allow_out_of_order: bool,
    pub allow_concurrent_asks: bool,
}

impl CheckOptions {
    pub fn finite() -> CheckOptions {
        CheckOptions {
            finite: true,
            ..CheckOptions::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// Invariant number, 1 to 6.
    pub invariant: u8,
    /// Zero-based position in the checked history; the history length for
    /// violations detected at the end of the trace.
    pub position: usize,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct InterfaceStats {
    pub asks: usize,
    pub terminate_requests: usize,
    pub values: usize,
    pub terminated_answers: usize,
    /// `abort`, `error`, `done` or `err`: how the stream ended, if it did.
    pub termination: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CheckReport {
    pub interface: String,
    pub verdict: Verdict,
    pub violations: Vec<Violation>,
    /// Obligations that are still open on an unfinished trace.
    pub pending: Vec<String>,
    pub stats: InterfaceStats,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// Distinct invariant numbers that were violated, ascending.
    pub fn invariants(&self) -> Vec<u8> {
        let mut ids: Vec<u8> = self.violations.iter().map(|v| v.invariant).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ReqKind {
    Ask,
    Terminate,
}

/// Incremental checker for one interface. Feed it events as they happen,
/// then call [`Monitor::finish`].
#[derive(Clone, Debug)]
pub struct Monitor {
    iface: InterfaceSpec,
    opts: CheckOptions,
    requests: BTreeMap<u32, ReqKind>,
    answers: BTreeMap<u32, bool>,
    next: u32,
    terminate_at: Option<u32>,
    terminated_at: Option<u32>,
    seen: usize,
    stats: InterfaceStats,
    violations: Vec<Violation>,
}

impl Monitor {
    pub fn new(iface: InterfaceSpec, opts: CheckOptions) -> Monitor {
        Monitor {
            iface,
            opts,
            requests: BTreeMap::new(),
            answers: BTreeMap::new(),
            next: 1,
            terminate_at: None,
            terminated_at: None,
            seen: 0,
            stats: InterfaceStats::default(),
            violations: Vec::new(),
        }
    }

    fn flag(&mut self, invariant: u8, position: usize, message: String) {
        self.violations.push(Violation {
            invariant,
            position,
            message,
        });
    }

    fn pending_asks(&self) -> impl Iterator<Item = u32> + '_ {
        self.requests
            .iter()
            .filter(|(i, k)| **k == ReqKind::Ask && !self.answers.contains_key(i))
            .map(|(i, _)| *i)
    }

    /// Observes the event at `position` of the global history. Events on
    /// other ports and method calls are ignored.
    pub fn observe(&mut self, position: usize, e: &Event) -> Result<(), ProtocolError> {
        self.seen = self.seen.max(position + 1);
        if !self.iface.owns(e) || matches!(e.payload, Payload::Call { .. }) {
            return Ok(());
        }
        let malformed = |message: &str| ProtocolError::Malformed {
            position,
            event: e.clone(),
            message: message.to_string(),
        };
        let port = e.port.as_ref().expect("owned events have ports");
        match &e.payload {
            Payload::Request { kind, var } => {
                if *port != self.iface.input {
                    return Err(malformed("request initiated on the upstream port"));
                }
                let Some(var) = var else {
                    return Err(malformed("request without a stream variable"));
                };
                let kind = match kind {
                    RequestKind::Ask => ReqKind::Ask,
                    RequestKind::Abort | RequestKind::Error(_) => ReqKind::Terminate,
                    RequestKind::Named(_) => return Err(malformed("not a pull-stream request")),
                };
                let i = self.index(var, &malformed)?;
                self.request(position, i, kind, e);
            }
            Payload::Answer { var, value } => {
                if *port != self.iface.output {
                    return Err(malformed("answer initiated on the downstream port"));
                }
                let i = self.index(var, &malformed)?;
                let terminated = match value {
                    AnswerValue::Value { primes, index } => {
                        if *primes != self.iface.level || index.concrete() != Some(i) {
                            return Err(malformed("value does not match its variable"));
                        }
                        false
                    }
                    AnswerValue::Done | AnswerValue::Err(_) => true,
                    AnswerValue::Symbol(_) => return Err(malformed("not a pull-stream answer")),
                };
                self.answer(position, i, terminated, value);
            }
            _ => return Err(malformed("`empty` in a trace")),
        }
        Ok(())
    }

    fn index(
        &self,
        var: &StreamVar,
        malformed: &dyn Fn(&str) -> ProtocolError,
    ) -> Result<u32, ProtocolError> {
        if var.primes != self.iface.level {
            return Err(malformed("stream variable has the wrong prime level"));
        }
        var.index
            .concrete()
            .ok_or_else(|| malformed("stream index is not concrete"))
    }

    fn request(&mut self, position: usize, i: u32, kind: ReqKind, e: &Event) {
        if let Some(t) = self.terminate_at {
            self.flag(1, position, format!("request `{e}` after terminate request at x_{t}"));
        } else if let Some(t) = self.terminated_at {
            self.flag(1, position, format!("request `{e}` after terminated answer at x_{t}"));
        }
        if self.requests.contains_key(&i) {
            self.flag(4, position, format!("x_{i} was already created"));
        } else if i != self.next && !self.opts.allow_out_of_order {
            self.flag(4, position, format!("request creates x_{i}, expected x_{}", self.next));
        }
        if kind == ReqKind::Ask && !self.opts.allow_concurrent_asks {
            let pending = self.pending_asks().next();
            if let Some(j) = pending {
                self.flag(5, position, format!("ask for x_{i} while x_{j} is unanswered"));
            }
        }
        match kind {
            ReqKind::Ask => self.stats.asks += 1,
            ReqKind::Terminate => {
                self.stats.terminate_requests += 1;
                if self.terminate_at.is_none() {
                    self.terminate_at = Some(i);
                    if self.stats.termination.is_none() {
                        let name = match &e.payload {
                            Payload::Request { kind: RequestKind::Abort, .. } => "abort",
                            _ => "error",
                        };
                        self.stats.termination = Some(name.to_string());
                    }
                }
            }
        }
        self.requests.entry(i).or_insert(kind);
        self.next = self.next.max(i + 1);
    }

    fn answer(&mut self, position: usize, i: u32, terminated: bool, value: &AnswerValue) {
        if !self.requests.contains_key(&i) {
            self.flag(3, position, format!("answer for x_{i}, which was never requested"));
            return;
        }
        if self.answers.contains_key(&i) {
            self.flag(3, position, format!("x_{i} answered twice"));
            return;
        }
        if !self.opts.allow_out_of_order {
            if let Some(j) = self
                .requests
                .keys()
                .find(|j| **j < i && !self.answers.contains_key(j))
            {
                self.flag(4, position, format!("x_{i} answered before x_{j}"));
            }
        }
        if !terminated {
            if let Some(t) = self.terminate_at {
                self.flag(1, position, format!("value for x_{i} after terminate request at x_{t}"));
            } else if let Some(t) = self.terminated_at.filter(|t| *t < i) {
                self.flag(1, position, format!("value for x_{i} after x_{t} terminated"));
            }
            self.stats.values += 1;
        } else {
            self.stats.terminated_answers += 1;
            if self.terminated_at.is_none() {
                self.terminated_at = Some(i);
                if self.terminate_at.is_none() {
                    self.stats.termination = Some(value.to_string());
                }
            }
        }
        self.answers.insert(i, terminated);
    }

    /// Closes the trace and produces the report.
    pub fn finish(mut self) -> CheckReport {
        let end = self.seen;
        let unanswered: Vec<u32> = self
            .requests
            .keys()
            .filter(|i| !self.answers.contains_key(i))
            .copied()
            .collect();
        let mut pending = Vec::new();
        for i in unanswered {
            if self.opts.finite {
                self.flag(2, end, format!("x_{i} is never answered"));
            } else {
                pending.push(format!("answer for x_{i}"));
            }
        }
        let active = !self.requests.is_empty();
        if active && self.terminated_at.is_none() {
            if self.opts.finite {
                self.flag(6, end, "finite stream never terminated".to_string());
            } else {
                pending.push("terminated answer".to_string());
            }
        }
        self.violations.sort_by_key(|v| (v.position, v.invariant));
        CheckReport {
            interface: self.iface.to_string(),
            verdict: if self.violations.is_empty() {
                Verdict::Pass
            } else {
                Verdict::Fail
            },
            violations: self.violations,
            pending,
            stats: self.stats,
        }
    }
}

/// Checks the events of `h` that belong to `iface`.
pub fn check(
    h: &History,
    iface: &InterfaceSpec,
    opts: CheckOptions,
) -> Result<CheckReport, ProtocolError> {
    let mut m = Monitor::new(iface.clone(), opts);
    for (pos, e) in h.iter().enumerate() {
        m.observe(pos, e)?;
    }
    Ok(m.finish())
}

/// Which generator a trace at one interface corresponds to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Shape {
    Normal { n: u32 },
    /// `n` is the smallest value count compatible with the trace; the
    /// early-terminated sequence does not depend on `n` beyond `r =< n`.
    Early { n: u32, r: u32, w: bool },
}

impl Shape {
    pub fn params(&self) -> SequenceParams {
        match *self {
            Shape::Normal { n } => SequenceParams::normal(n),
            Shape::Early { n, r, w } => SequenceParams {
                n,
                r,
                w,
                mode: Mode::Coroutine,
            },
        }
    }
}

/// Derives generator parameters from a trace: with no terminate request it
/// is a normal sequence with one fewer value than asks; otherwise an early
/// termination after the asks seen, waited for iff the last ask got a value
/// before the terminate request.
pub fn classify(h: &History, iface: &InterfaceSpec) -> Result<Shape, ProtocolError> {
    let events = iface.project(h);
    let mut asks = 0u32;
    let mut terminate_pos = None;
    let mut last_ask = None;
    for (pos, e) in events.iter().enumerate() {
        if let Payload::Request { kind, var: Some(v) } = &e.payload {
            match kind {
                RequestKind::Ask => {
                    asks += 1;
                    last_ask = v.index.concrete();
                }
                k if k.is_terminate() => {
                    if terminate_pos.is_some() {
                        return Err(ProtocolError::Shape("more than one terminate request".into()));
                    }
                    terminate_pos = Some(pos);
                }
                _ => {}
            }
        }
    }
    let Some(tpos) = terminate_pos else {
        if asks == 0 {
            return Err(ProtocolError::Shape("no requests".into()));
        }
        return Ok(Shape::Normal { n: asks - 1 });
    };
    let w = match last_ask {
        None => true,
        Some(r) => events.events()[..tpos].contains(&iface.value(r)),
    };
    Ok(Shape::Early {
        n: asks,
        r: asks,
        w,
    })
}

/// True when the interface projection of `h` is one of the histories the
/// matching generator describes.
pub fn matches_generator(h: &History, iface: &InterfaceSpec) -> Result<bool, ProtocolError> {
    let shape = classify(h, iface)?;
    let projected = iface.project(h);
    let lins = shape.params().linearizations(iface)?;
    Ok(lins.iter().any(|l| l.as_slice() == projected.events()))
}
