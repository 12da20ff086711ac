//! Differential test: a hand-written state-machine source and sink against
//! the rule-driven ones, compared on the full set of quiescent histories.

use std::collections::BTreeSet;

use pullstream::entail::{Engine, Scheduler};
use pullstream::events::{AnswerValue, Event, History, Payload, RequestKind};
use pullstream::protocol::InterfaceSpec;
use pullstream::reference::{Pipeline, SinkParams, SourceParams};

struct Mirror {
    io: InterfaceSpec,
    source: SourceParams,
    sink: SinkParams,
}

enum Seen {
    Ask,
    Abort,
    Error,
}

impl Mirror {
    fn request(&self, h: &History, i: u32) -> Option<Seen> {
        if h.contains(&self.io.ask(i)).unwrap() {
            Some(Seen::Ask)
        } else if h.contains(&self.io.abort(i)).unwrap() {
            Some(Seen::Abort)
        } else if h.contains(&self.io.error(i)).unwrap() {
            Some(Seen::Error)
        } else {
            None
        }
    }

    fn answer(&self, h: &History, i: u32) -> Option<AnswerValue> {
        h.iter().find_map(|e| match &e.payload {
            Payload::Answer { var, value }
                if e.port.as_ref() == Some(&self.io.output) && var.index.concrete() == Some(i) =>
            {
                Some(value.clone())
            }
            _ => None,
        })
    }

    fn terminated(&self, h: &History, i: u32) -> bool {
        self.answer(h, i).is_some_and(|a| a.is_terminated())
    }

    fn has_value(&self, h: &History, i: u32) -> bool {
        matches!(self.answer(h, i), Some(AnswerValue::Value { .. }))
    }

    fn enabled(&self, h: &History) -> Vec<Event> {
        let mut out = Vec::new();
        let (n, err) = (self.source.n, self.source.err);
        let top = h.max_index() + 1;
        for i in 1..=top {
            if self.answer(h, i).is_some() {
                continue;
            }
            let terminate_next = matches!(self.request(h, i + 1), Some(Seen::Abort | Seen::Error));
            match self.request(h, i) {
                Some(Seen::Ask) if i <= n && terminate_next => out.push(self.io.done(i)),
                Some(Seen::Ask) if i <= n => out.push(Event::value(Some(&self.io.output), self.io.var(i))),
                Some(Seen::Ask) if i == n + 1 => {
                    out.push(if err { self.io.err(i) } else { self.io.done(i) })
                }
                Some(kind @ (Seen::Abort | Seen::Error)) if i == 1 || self.answer(h, i - 1).is_some() => {
                    out.push(if matches!(kind, Seen::Abort) { self.io.done(i) } else { self.io.err(i) })
                }
                _ => {}
            }
        }

        let SinkParams { r, err, w } = self.sink;
        for i in 1..=r {
            if i == 1 || self.has_value(h, i - 1) {
                out.push(self.io.ask(i));
            }
        }
        let i = r + 1;
        let may_terminate = if r == 0 {
            true
        } else if w {
            self.has_value(h, r)
        } else {
            h.contains(&self.io.ask(r)).unwrap() && !self.terminated(h, r)
        };
        if may_terminate {
            out.push(if err { self.io.error(i) } else { self.io.abort(i) });
        }
        out.retain(|e| !h.contains(e).unwrap());
        out
    }

    fn explore(&self) -> BTreeSet<Vec<Event>> {
        let mut done = BTreeSet::new();
        let mut stack = vec![History::new()];
        while let Some(h) = stack.pop() {
            let next = self.enabled(&h);
            if next.is_empty() {
                done.insert(h.events().to_vec());
            }
            for e in next {
                stack.push(h.appended(e).unwrap());
            }
        }
        done
    }
}

fn kind_name(e: &Event) -> &'static str {
    match &e.payload {
        Payload::Request { kind: RequestKind::Ask, .. } => "ask",
        Payload::Request { .. } => "terminate",
        _ => "answer",
    }
}

#[test]
fn mirror_matches_rules() {
    let mut compared = 0;
    for n in 0..=3 {
        for r in 0..=4 {
            for w in [false, true] {
                for source_err in [false, true] {
                    for sink_err in [false, true] {
                        let source = SourceParams { n, err: source_err };
                        let sink = SinkParams { r, err: sink_err, w };
                        let p = Pipeline::new(source, sink);
                        let io = p.interfaces()[0].clone();
                        let mirror = Mirror { io, source, sink };
                        let expected = mirror.explore();
                        let engine = Engine::new(p.engine_config(Scheduler::Exhaustive)).unwrap();
                        let got: BTreeSet<Vec<Event>> = engine
                            .explore()
                            .unwrap()
                            .into_iter()
                            .map(|run| run.history.events().to_vec())
                            .collect();
                        assert_eq!(got, expected, "{p}");
                        compared += got.len();
                    }
                }
            }
        }
    }
    assert!(compared > 160);
}

#[test]
fn mirror_sees_the_race() {
    // sink terminates without waiting; the source may or may not answer first
    let source = SourceParams { n: 2, err: false };
    let sink = SinkParams { r: 1, err: false, w: false };
    let p = Pipeline::new(source, sink);
    let mirror = Mirror { io: p.interfaces()[0].clone(), source, sink };
    let all = mirror.explore();
    assert_eq!(all.len(), 2);
    for h in &all {
        let kinds: Vec<&str> = h.iter().map(kind_name).collect();
        assert_eq!(kinds.iter().filter(|k| **k == "answer").count(), 2);
    }
}
