//! Rule-driven reference modules (source, sink, take transformer, ping-pong)
//! and their composition into pipelines.
//!
//! Module rule sets are written against canonical ports: a source answers on
//! `UO` to requests from `TI`, a sink requests on `DI` and hears answers on
//! `TO`, and a transformer sits in between using all four with its
//! downstream side one prime level up. [`compose`] renames those ports onto
//! the concrete pipeline interfaces.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::entail::{Binding, EngineConfig, Module, Scheduler};
use crate::events::Port;
use crate::lang::{parse_rules, RuleAst, RuleSet};
use crate::protocol::InterfaceSpec;

const SOURCE: &str = include_str!("../rules/source.rules");
const SINK: &str = include_str!("../rules/sink.rules");
const TAKE: &str = include_str!("../rules/transformer.rules");
const FAULTY_TAKE: &str = include_str!("../rules/faulty_take.rules");
const PING_CLIENT: &str = include_str!("../rules/ping_pong_client.rules");
const PING_SERVER: &str = include_str!("../rules/ping_pong_server.rules");

fn builtin(text: &str) -> RuleSet {
    parse_rules(text).expect("bundled rule file parses")
}

pub fn source_rules() -> RuleSet {
    builtin(SOURCE)
}

pub fn sink_rules() -> RuleSet {
    builtin(SINK)
}

pub fn transformer_rules() -> RuleSet {
    builtin(TAKE)
}

/// A take transformer that forwards downstream terminations even after it
/// has terminated its upstream on its own.
pub fn faulty_take_rules() -> RuleSet {
    builtin(FAULTY_TAKE)
}

pub fn ping_pong_client_rules() -> RuleSet {
    builtin(PING_CLIENT)
}

pub fn ping_pong_server_rules() -> RuleSet {
    builtin(PING_SERVER)
}

/// Client sending `n` pings and a server answering each with `pong`.
pub fn ping_pong(n: u32) -> Vec<Module> {
    vec![
        Module::new(ping_pong_client_rules(), Binding::new().nat("n", n.into())),
        Module::new(ping_pong_server_rules(), Binding::new()),
    ]
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize)]
pub struct SourceParams {
    pub n: u32,
    pub err: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize)]
pub struct SinkParams {
    pub r: u32,
    pub err: bool,
    pub w: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize)]
pub struct TransformerParams {
    pub r: u32,
    pub err: bool,
}

impl SourceParams {
    pub fn binding(&self) -> Binding {
        Binding::new().nat("n", self.n.into()).flag("err", self.err)
    }
}

impl SinkParams {
    pub fn binding(&self) -> Binding {
        Binding::new()
            .nat("r", self.r.into())
            .flag("err", self.err)
            .flag("w", self.w)
    }
}

impl TransformerParams {
    pub fn binding(&self) -> Binding {
        Binding::new().nat("r", self.r.into()).flag("err", self.err)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ComposeError {
    #[error("rule set `{ruleset}` uses port `{port}`, which has no mapping")]
    Unmapped { ruleset: String, port: Port },
}

/// Where a canonical port lands: the concrete port and the prime shift for
/// variables and values seen through it.
pub type PortMap = BTreeMap<Port, (Port, i16)>;

/// Renames the ports of `rules` through `map`; every port must be mapped.
pub fn compose(rules: &RuleSet, name: &str, map: &PortMap) -> Result<RuleSet, ComposeError> {
    for rule in &rules.rules {
        let mut ports = Vec::new();
        rule.antecedent.visit_events(&mut |e| ports.extend(e.port.clone()));
        ports.extend(rule.consequent.port.clone());
        if let Some(port) = ports.into_iter().find(|p| !map.contains_key(p)) {
            return Err(ComposeError::Unmapped {
                ruleset: rules.name.clone(),
                port,
            });
        }
    }
    Ok(compose_partial(rules, name, map))
}

/// Like [`compose`] but leaves unmapped ports alone.
pub fn compose_partial(rules: &RuleSet, name: &str, map: &PortMap) -> RuleSet {
    let f = |p: &Port| map.get(p).cloned().unwrap_or_else(|| (p.clone(), 0));
    RuleSet {
        name: name.to_string(),
        params: rules.params.clone(),
        rules: rules
            .rules
            .iter()
            .map(|r| RuleAst {
                antecedent: r.antecedent.map_events(&|e| e.map_ports(&f)),
                consequent: r.consequent.map_ports(&f),
                reversed: r.reversed,
            })
            .collect(),
    }
}

/// source, zero or more take transformers, sink.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Pipeline {
    pub source: SourceParams,
    pub transformers: Vec<TransformerParams>,
    pub sink: SinkParams,
    /// Use the faulty take rules for every transformer.
    pub faulty_take: bool,
}

impl Pipeline {
    pub fn new(source: SourceParams, sink: SinkParams) -> Pipeline {
        Pipeline {
            source,
            transformers: Vec::new(),
            sink,
            faulty_take: false,
        }
    }

    pub fn transformer(mut self, t: TransformerParams) -> Pipeline {
        self.transformers.push(t);
        self
    }

    pub fn faulty(mut self, faulty: bool) -> Pipeline {
        self.faulty_take = faulty;
        self
    }

    /// Interfaces from upstream to downstream. Interface `j` carries prime
    /// level `j`; with `k` transformers its ports are `UO`/`TI_1` for
    /// `j = 0`, `TO_j`/`TI_{j+1}` in between and `TO_k`/`DI` at the sink.
    pub fn interfaces(&self) -> Vec<InterfaceSpec> {
        let k = self.transformers.len() as u32;
        (0..=k)
            .map(|j| {
                let output = if j == 0 { Port::new("UO") } else { Port::indexed("TO", j) };
                let input = if j == k { Port::new("DI") } else { Port::indexed("TI", j + 1) };
                InterfaceSpec::new(input, output, j as u8).expect("distinct ports")
            })
            .collect()
    }

    /// The composed rule sets with their parameter bindings.
    pub fn modules(&self) -> Vec<Module> {
        let ifaces = self.interfaces();
        let k = self.transformers.len();
        let canon = Port::new;
        let mut modules = Vec::new();

        let map: PortMap = [
            (canon("UO"), (ifaces[0].output.clone(), 0)),
            (canon("TI"), (ifaces[0].input.clone(), 0)),
        ]
        .into();
        modules.push(Module::new(
            compose_partial(&source_rules(), "source", &map),
            self.source.binding(),
        ));

        let take = if self.faulty_take { faulty_take_rules() } else { transformer_rules() };
        for (idx, t) in self.transformers.iter().enumerate() {
            let shift = idx as i16;
            let (up, down) = (&ifaces[idx], &ifaces[idx + 1]);
            let map: PortMap = [
                (canon("UO"), (up.output.clone(), shift)),
                (canon("TI"), (up.input.clone(), shift)),
                (canon("TO"), (down.output.clone(), shift)),
                (canon("DI"), (down.input.clone(), shift)),
            ]
            .into();
            let name = format!("{}_{}", take.name, idx + 1);
            modules.push(Module::new(compose_partial(&take, &name, &map), t.binding()));
        }

        let last = &ifaces[k];
        let shift = k as i16 - 1;
        let map: PortMap = [
            (canon("TO"), (last.output.clone(), shift)),
            (canon("DI"), (last.input.clone(), shift)),
        ]
        .into();
        modules.push(Module::new(
            compose_partial(&sink_rules(), "sink", &map),
            self.sink.binding(),
        ));
        modules
    }

    pub fn engine_config(&self, scheduler: Scheduler) -> EngineConfig {
        EngineConfig::new(self.modules()).scheduler(scheduler)
    }

    /// True when this configuration is expected to make a correct take emit
    /// a second upstream terminate if faulty: the sink asks exactly one past
    /// the take's limit without waiting and the source has enough values to
    /// reach that limit.
    pub fn triggers_faulty_take(&self) -> bool {
        let Some(first) = self.transformers.first() else {
            return false;
        };
        let limit = self.transformers.iter().map(|t| t.r).min().unwrap_or(first.r);
        self.transformers.len() == 1
            && self.sink.r == limit + 1
            && !self.sink.w
            && self.source.n >= limit
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "source(n={}, err={})", self.source.n, self.source.err)?;
        for t in &self.transformers {
            let name = if self.faulty_take { "faulty_take" } else { "take" };
            write!(f, " | {name}(r={}, err={})", t.r, t.err)?;
        }
        write!(
            f,
            " | sink(r={}, err={}, w={})",
            self.sink.r, self.sink.err, self.sink.w
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entail::Engine;
    use crate::protocol::{check, CheckOptions};

    #[test]
    fn bundled_rules_parse() {
        for rs in [
            source_rules(),
            sink_rules(),
            transformer_rules(),
            faulty_take_rules(),
            ping_pong_client_rules(),
            ping_pong_server_rules(),
        ] {
            assert!(!rs.rules.is_empty(), "{}", rs.name);
        }
    }

    #[test]
    fn compose_maps_ports_and_primes() {
        let map: PortMap = [
            (Port::new("TO"), (Port::new("UO"), -1)),
            (Port::new("DI"), (Port::new("TI"), -1)),
        ]
        .into();
        let rs = compose(&sink_rules(), "sink", &map).unwrap();
        let text = rs.rules[1].to_string();
        assert!(text.contains("TI: ask[x_i]"), "{text}");
        assert!(text.contains("UO: x_{i-1} := v_{i-1}"), "{text}");
        assert!(compose(&source_rules(), "s", &map).is_err());
    }

    #[test]
    fn interfaces() {
        let p = Pipeline::new(SourceParams::default(), SinkParams::default());
        assert_eq!(p.interfaces()[0].to_string(), "UO-DI");
        let p = p.transformer(TransformerParams::default()).transformer(TransformerParams::default());
        let names: Vec<String> = p.interfaces().iter().map(|i| i.to_string()).collect();
        assert_eq!(names, ["UO-TI_1", "TO_1-TI_2", "TO_2-DI"]);
    }

    fn all_pass(p: &Pipeline) -> usize {
        let engine = Engine::new(p.engine_config(Scheduler::Exhaustive)).unwrap();
        let runs = engine.explore().unwrap();
        for run in &runs {
            for iface in p.interfaces() {
                let report = check(&run.history, &iface, CheckOptions::finite()).unwrap();
                assert!(report.passed(), "{p}\n{}\n{report:?}", run.history);
            }
        }
        runs.len()
    }

    #[test]
    fn source_sink_direct() {
        for n in 0..3 {
            for r in 0..4 {
                for w in [false, true] {
                    for err in [false, true] {
                        let p = Pipeline::new(
                            SourceParams { n, err },
                            SinkParams { r, err, w },
                        );
                        assert!(all_pass(&p) >= 1);
                    }
                }
            }
        }
    }

    #[test]
    fn with_take() {
        for n in 0..3 {
            for rt in 0..3 {
                for r in 0..4 {
                    for w in [false, true] {
                        let p = Pipeline::new(SourceParams { n, err: false }, SinkParams { r, err: false, w })
                            .transformer(TransformerParams { r: rt, err: false });
                        all_pass(&p);
                    }
                }
            }
        }
    }

    #[test]
    fn faulty_take_second_terminate() {
        let p = Pipeline::new(SourceParams { n: 2, err: false }, SinkParams { r: 2, err: false, w: false })
            .transformer(TransformerParams { r: 1, err: false })
            .faulty(true);
        assert!(p.triggers_faulty_take());
        let engine = Engine::new(p.engine_config(Scheduler::Exhaustive)).unwrap();
        let runs = engine.explore().unwrap();
        let upstream = &p.interfaces()[0];
        assert!(runs.iter().any(|run| {
            check(&run.history, upstream, CheckOptions::finite())
                .unwrap()
                .invariants()
                .contains(&1)
        }));
    }

    #[test]
    fn ping_pong_runs() {
        let engine = Engine::new(EngineConfig::new(ping_pong(3))).unwrap();
        let runs = engine.explore().unwrap();
        assert_eq!(runs.len(), 1);
        assert_eq!(runs[0].history.len(), 6);
    }
}
