//! History entailment (`H |= a`) and the forward-chaining rule engine that
//! extends histories one consequent at a time.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::events::{Event, History};
use crate::lang::{free_vars, ParamKind, RuleSet};
use crate::order::{normalize_antecedent, Operand, OrderError, OrderExpr, QuantKind, Relation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Nat(i64),
    Bool(bool),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Nat(n) => write!(f, "{n}"),
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

/// Values for index variables and rule-set parameters.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Binding(BTreeMap<String, Value>);

impl Binding {
    pub fn new() -> Binding {
        Binding::default()
    }

    pub fn with(mut self, name: &str, value: Value) -> Binding {
        self.0.insert(name.to_string(), value);
        self
    }

    pub fn nat(self, name: &str, n: i64) -> Binding {
        self.with(name, Value::Nat(n))
    }

    pub fn flag(self, name: &str, b: bool) -> Binding {
        self.with(name, Value::Bool(b))
    }

    pub fn insert(&mut self, name: &str, value: Value) {
        self.0.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<Value> {
        self.0.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Value)> {
        self.0.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Binding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(k, v)| format!("{k}={v}")).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum EntailError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("`{0}` is used as a flag but bound to a number")]
    NotAFlag(String),
    #[error("`{0}` is used as a number but bound to a boolean")]
    NotANumber(String),
    #[error("quantifier domain of {0} assignments exceeds the cap")]
    DomainCap(usize),
    #[error(transparent)]
    Order(#[from] OrderError),
}

pub const DEFAULT_DOMAIN_CAP: usize = 1_000_000;

/// Variable environment during evaluation; later entries shadow earlier ones.
#[derive(Clone, Debug, Default)]
struct Env {
    vars: Vec<(String, Value)>,
}

impl Env {
    fn from_binding(b: &Binding) -> Env {
        Env {
            vars: b.iter().map(|(k, v)| (k.clone(), *v)).collect(),
        }
    }

    fn get(&self, name: &str) -> Option<Value> {
        self.vars.iter().rev().find(|(k, _)| k == name).map(|(_, v)| *v)
    }

    fn nat(&self, name: &str) -> Result<i64, EntailError> {
        match self.get(name) {
            Some(Value::Nat(n)) => Ok(n),
            Some(Value::Bool(_)) => Err(EntailError::NotANumber(name.to_string())),
            None => Err(EntailError::Unbound(name.to_string())),
        }
    }

    fn lookup(&self) -> impl Fn(&str) -> Option<i64> + '_ {
        move |name| match self.get(name) {
            Some(Value::Nat(n)) => Some(n),
            _ => None,
        }
    }
}

struct Evaluator<'a> {
    h: &'a History,
    domain_cap: usize,
}

impl Evaluator<'_> {
    fn domain(&self) -> i64 {
        i64::from(self.h.max_index()) + 1
    }

    fn event(&self, e: &Event, env: &Env) -> Result<Option<usize>, EntailError> {
        let concrete = e
            .instantiate(&env.lookup())
            .map_err(|u| match env.get(&u.0) {
                Some(Value::Bool(_)) => EntailError::NotANumber(u.0),
                _ => EntailError::Unbound(u.0),
            })?;
        Ok(concrete.and_then(|c| self.h.position(&c)))
    }

    fn operand(&self, o: &Operand, env: &Env) -> Result<i64, EntailError> {
        match o {
            Operand::Num(n) => Ok(*n as i64),
            Operand::Var { name, offset } => Ok(env.nat(name)? + offset),
        }
    }

    fn relation(&self, r: &Relation, env: &Env) -> Result<bool, EntailError> {
        let mut lhs = self.operand(&r.first, env)?;
        for (op, o) in &r.rest {
            let rhs = self.operand(o, env)?;
            if !op.holds(lhs, rhs) {
                return Ok(false);
            }
            lhs = rhs;
        }
        Ok(true)
    }

    fn chain<'x>(x: &'x OrderExpr, out: &mut Vec<&'x OrderExpr>) {
        match x {
            OrderExpr::Seq(a, b) => {
                Evaluator::chain(a, out);
                Evaluator::chain(b, out);
            }
            other => out.push(other),
        }
    }

    fn eval(&self, x: &OrderExpr, env: &mut Env) -> Result<bool, EntailError> {
        match x {
            OrderExpr::Event(e) => Ok(self.event(e, env)?.is_some()),
            OrderExpr::Seq(..) => {
                let mut items = Vec::new();
                Evaluator::chain(x, &mut items);
                let mut last: Option<usize> = None;
                for item in items {
                    match item {
                        OrderExpr::Event(e) => match self.event(e, env)? {
                            Some(pos) if last.is_none_or(|l| l < pos) => last = Some(pos),
                            _ => return Ok(false),
                        },
                        OrderExpr::Empty => {}
                        OrderExpr::And(..) | OrderExpr::Or(..) => {
                            // only reachable for unnormalized input
                            let normal = normalize_antecedent(x)?;
                            return self.eval(&normal, env);
                        }
                        cond => {
                            if !self.eval(cond, env)? {
                                return Ok(false);
                            }
                        }
                    }
                }
                Ok(true)
            }
            OrderExpr::And(a, b) => Ok(self.eval(a, env)? && self.eval(b, env)?),
            OrderExpr::Or(..) => {
                // exclusive choice over the whole `|` chain: exactly one branch
                let mut branches = Vec::new();
                or_branches(x, &mut branches);
                let mut held = 0;
                for b in branches {
                    if self.eval(b, env)? {
                        held += 1;
                        if held > 1 {
                            return Ok(false);
                        }
                    }
                }
                Ok(held == 1)
            }
            OrderExpr::Not(a) => Ok(!self.eval(a, env)?),
            OrderExpr::Quant { kind, vars, body } => {
                let want = *kind == QuantKind::Exists;
                let found = self.search(vars, body, env, want)?;
                Ok(if want { found } else { !found })
            }
            OrderExpr::Rel(r) => self.relation(r, env),
            OrderExpr::Bool(b) => Ok(*b),
            OrderExpr::Flag(name) => match env.get(name) {
                Some(Value::Bool(b)) => Ok(b),
                Some(Value::Nat(_)) => Err(EntailError::NotAFlag(name.clone())),
                None => Err(EntailError::Unbound(name.clone())),
            },
            OrderExpr::Empty => Ok(true),
        }
    }

    /// Looks for an assignment of `vars` under which `body` evaluates to `want`.
    fn search(
        &self,
        vars: &[String],
        body: &OrderExpr,
        env: &mut Env,
        want: bool,
    ) -> Result<bool, EntailError> {
        let d = self.domain();
        let total = (d as usize).checked_pow(vars.len() as u32);
        if total.is_none_or(|t| t > self.domain_cap) {
            return Err(EntailError::DomainCap(total.unwrap_or(usize::MAX)));
        }
        self.search_from(vars, body, env, want, d)
    }

    fn search_from(
        &self,
        vars: &[String],
        body: &OrderExpr,
        env: &mut Env,
        want: bool,
        d: i64,
    ) -> Result<bool, EntailError> {
        let Some((first, rest)) = vars.split_first() else {
            return Ok(self.eval(body, env)? == want);
        };
        for v in 1..=d {
            env.vars.push((first.clone(), Value::Nat(v)));
            let hit = self.search_from(rest, body, env, want, d);
            env.vars.pop();
            if hit? {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

/// `H |= a` under `binding`. Free variables not in the binding are read as
/// existentially quantified over `1 ..= max_index(H) + 1`.
fn or_branches<'a>(x: &'a OrderExpr, out: &mut Vec<&'a OrderExpr>) {
    match x {
        OrderExpr::Or(a, b) => {
            or_branches(a, out);
            or_branches(b, out);
        }
        other => out.push(other),
    }
}

pub fn entails(h: &History, a: &OrderExpr, binding: &Binding) -> Result<bool, EntailError> {
    let normal = normalize_antecedent(a)?;
    entails_normalized(h, &normal, binding)
}

/// As [`entails`] for an antecedent that is already normalized.
pub fn entails_normalized(
    h: &History,
    a: &OrderExpr,
    binding: &Binding,
) -> Result<bool, EntailError> {
    let bound: BTreeSet<String> = binding.iter().map(|(k, _)| k.clone()).collect();
    let free = free_vars(a, &bound);
    let ev = Evaluator {
        h,
        domain_cap: DEFAULT_DOMAIN_CAP,
    };
    let mut env = Env::from_binding(binding);
    if free.is_empty() {
        ev.eval(a, &mut env)
    } else {
        ev.search(&free, a, &mut env, true)
    }
}

/// A rule set together with values for its parameters.
#[derive(Clone, Debug)]
pub struct Module {
    pub rules: RuleSet,
    pub params: Binding,
}

impl Module {
    pub fn new(rules: RuleSet, params: Binding) -> Module {
        Module { rules, params }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheduler {
    /// One run; ties between enabled instances broken by a seeded RNG.
    Deterministic { seed: u64 },
    /// Every interleaving, depth first.
    Exhaustive,
}

pub const DEFAULT_MAX_STEPS: usize = 10_000;
pub const DEFAULT_MAX_BRANCHES: usize = 200_000;

#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub modules: Vec<Module>,
    pub scheduler: Scheduler,
    pub max_steps: usize,
    /// Cap on the number of quiescent histories an exhaustive run may produce.
    pub max_branches: usize,
}

impl EngineConfig {
    pub fn new(modules: Vec<Module>) -> EngineConfig {
        EngineConfig {
            modules,
            scheduler: Scheduler::Deterministic { seed: 0 },
            max_steps: DEFAULT_MAX_STEPS,
            max_branches: DEFAULT_MAX_BRANCHES,
        }
    }

    pub fn scheduler(mut self, s: Scheduler) -> EngineConfig {
        self.scheduler = s;
        self
    }

    pub fn max_steps(mut self, n: usize) -> EngineConfig {
        self.max_steps = n;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("still active after {steps} steps (possible livelock); last history: {history}")]
    StepCap { steps: usize, history: String },
    #[error("more than {0} quiescent histories")]
    BranchCap(usize),
    #[error("while evaluating rule {rule} of `{ruleset}`: {source}")]
    Eval {
        ruleset: String,
        rule: usize,
        source: EntailError,
    },
}

/// One rule of one module, with the binding of its free variables.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RuleInstance {
    pub ruleset: String,
    /// Zero-based position of the rule in its rule set.
    pub rule: usize,
    pub binding: Binding,
    pub event: Event,
}

/// A rule instance fired while extending a history of length `position`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Firing {
    pub position: usize,
    pub instance: RuleInstance,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Run {
    pub history: History,
    pub firings: Vec<Firing>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Step {
    Extended(History, RuleInstance),
    Quiescent,
}

struct CompiledRule {
    ruleset: String,
    position: usize,
    antecedent: OrderExpr,
    consequent: Event,
    free: Vec<String>,
    params: Binding,
}

pub struct Engine {
    rules: Vec<CompiledRule>,
    config: EngineConfig,
}

impl Engine {
    pub fn new(config: EngineConfig) -> Result<Engine, EngineError> {
        if config.max_steps == 0 {
            return Err(EngineError::Config("the step cap must be at least 1".into()));
        }
        let mut names = HashSet::new();
        let mut rules = Vec::new();
        for m in &config.modules {
            if !names.insert(m.rules.name.clone()) {
                return Err(EngineError::Config(format!(
                    "duplicate rule set name `{}`",
                    m.rules.name
                )));
            }
            for p in &m.rules.params {
                match (p.kind, m.params.get(&p.name)) {
                    (ParamKind::Nat, Some(Value::Nat(n))) if n >= 0 => {}
                    (ParamKind::Bool, Some(Value::Bool(_))) => {}
                    (_, None) => {
                        return Err(EngineError::Config(format!(
                            "parameter `{}` of `{}` is not set",
                            p.name, m.rules.name
                        )))
                    }
                    _ => {
                        return Err(EngineError::Config(format!(
                            "parameter `{}` of `{}` has the wrong kind",
                            p.name, m.rules.name
                        )))
                    }
                }
            }
            let params: BTreeSet<String> = m.params.iter().map(|(k, _)| k.clone()).collect();
            for (position, r) in m.rules.rules.iter().enumerate() {
                let antecedent =
                    normalize_antecedent(&r.antecedent).map_err(|e| EngineError::Eval {
                        ruleset: m.rules.name.clone(),
                        rule: position,
                        source: e.into(),
                    })?;
                let mut free = free_vars(&antecedent, &params);
                for v in r.consequent.variables() {
                    if !free.contains(&v) && !params.contains(&v) {
                        free.push(v);
                    }
                }
                rules.push(CompiledRule {
                    ruleset: m.rules.name.clone(),
                    position,
                    antecedent,
                    consequent: r.consequent.clone(),
                    free,
                    params: m.params.clone(),
                });
            }
        }
        Ok(Engine { rules, config })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    /// All enabled rule instances at `h`, sorted by rule set name, rule
    /// position and binding.
    pub fn enabled(&self, h: &History) -> Result<Vec<RuleInstance>, EngineError> {
        let mut out = Vec::new();
        let domain = i64::from(h.max_index()) + 1;
        let ev = Evaluator {
            h,
            domain_cap: DEFAULT_DOMAIN_CAP,
        };
        for rule in &self.rules {
            let wrap = |source: EntailError| EngineError::Eval {
                ruleset: rule.ruleset.clone(),
                rule: rule.position,
                source,
            };
            let mut env = Env::from_binding(&rule.params);
            let n = rule.free.len();
            let mut values = vec![1i64; n];
            loop {
                for (k, name) in rule.free.iter().enumerate() {
                    env.vars.push((name.clone(), Value::Nat(values[k])));
                }
                let concrete = rule
                    .consequent
                    .instantiate(&env.lookup())
                    .map_err(|u| wrap(EntailError::Unbound(u.0)))?;
                if let Some(event) = concrete {
                    if h.position(&event).is_none() && ev.eval(&rule.antecedent, &mut env).map_err(wrap)? {
                        let mut binding = Binding::new();
                        for (k, name) in rule.free.iter().enumerate() {
                            binding.insert(name, Value::Nat(values[k]));
                        }
                        out.push(RuleInstance {
                            ruleset: rule.ruleset.clone(),
                            rule: rule.position,
                            binding,
                            event,
                        });
                    }
                }
                env.vars.truncate(env.vars.len() - n);
                if !advance(&mut values, domain) {
                    break;
                }
            }
        }
        out.sort();
        Ok(out)
    }

    /// Appends the consequent of the instance `choose` picks, or reports quiescence.
    pub fn step(
        &self,
        h: &History,
        choose: impl FnOnce(&[RuleInstance]) -> usize,
    ) -> Result<Step, EngineError> {
        let enabled = self.enabled(h)?;
        if enabled.is_empty() {
            return Ok(Step::Quiescent);
        }
        let pick = choose(&enabled).min(enabled.len() - 1);
        let inst = enabled[pick].clone();
        let next = h
            .appended(inst.event.clone())
            .expect("enabled consequents are concrete and new");
        Ok(Step::Extended(next, inst))
    }

    /// A single run under a seeded scheduler.
    pub fn run_seeded(&self, seed: u64) -> Result<Run, EngineError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut h = History::new();
        let mut firings = Vec::new();
        loop {
            if firings.len() == self.config.max_steps {
                if self.enabled(&h)?.is_empty() {
                    break;
                }
                return Err(EngineError::StepCap {
                    steps: self.config.max_steps,
                    history: h.to_string(),
                });
            }
            let position = h.len();
            match self.step(&h, |en| {
                let idx: Vec<usize> = (0..en.len()).collect();
                *idx.choose(&mut rng).expect("non-empty")
            })? {
                Step::Quiescent => break,
                Step::Extended(next, instance) => {
                    firings.push(Firing { position, instance });
                    h = next;
                }
            }
        }
        Ok(Run { history: h, firings })
    }

    /// Every quiescent history reachable under some scheduling, sorted and
    /// without duplicates.
    pub fn explore(&self) -> Result<Vec<Run>, EngineError> {
        let mut out = Vec::new();
        let mut firings = Vec::new();
        self.dfs(&History::new(), &mut firings, &mut out)?;
        out.sort_by(|a, b| a.history.events().cmp(b.history.events()));
        out.dedup_by(|a, b| a.history == b.history);
        Ok(out)
    }

    fn dfs(
        &self,
        h: &History,
        firings: &mut Vec<Firing>,
        out: &mut Vec<Run>,
    ) -> Result<(), EngineError> {
        let enabled = self.enabled(h)?;
        if enabled.is_empty() {
            if out.len() == self.config.max_branches {
                return Err(EngineError::BranchCap(self.config.max_branches));
            }
            out.push(Run {
                history: h.clone(),
                firings: firings.clone(),
            });
            return Ok(());
        }
        if firings.len() == self.config.max_steps {
            return Err(EngineError::StepCap {
                steps: self.config.max_steps,
                history: h.to_string(),
            });
        }
        let mut seen = HashSet::new();
        for inst in enabled {
            if !seen.insert(inst.event.clone()) {
                continue;
            }
            let next = h
                .appended(inst.event.clone())
                .expect("enabled consequents are concrete and new");
            firings.push(Firing {
                position: h.len(),
                instance: inst,
            });
            self.dfs(&next, firings, out)?;
            firings.pop();
        }
        Ok(())
    }

    /// Runs according to the configured scheduler.
    pub fn run(&self) -> Result<Vec<Run>, EngineError> {
        match self.config.scheduler {
            Scheduler::Deterministic { seed } => Ok(vec![self.run_seeded(seed)?]),
            Scheduler::Exhaustive => self.explore(),
        }
    }

    /// Checks that each firing's antecedent held on the prefix it fired at.
    pub fn replay(&self, run: &Run) -> Result<bool, EngineError> {
        for f in &run.firings {
            let prefix = History::from_events(run.history.events()[..f.position].iter().cloned())
                .expect("prefix of a history");
            if run.history.events().get(f.position) != Some(&f.instance.event) {
                return Ok(false);
            }
            let Some(rule) = self
                .rules
                .iter()
                .find(|r| r.ruleset == f.instance.ruleset && r.position == f.instance.rule)
            else {
                return Ok(false);
            };
            let mut binding = rule.params.clone();
            for (k, v) in f.instance.binding.iter() {
                binding.insert(k, *v);
            }
            let ok = entails_normalized(&prefix, &rule.antecedent, &binding).map_err(|source| {
                EngineError::Eval {
                    ruleset: rule.ruleset.clone(),
                    rule: rule.position,
                    source,
                }
            })?;
            if !ok {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Steps `values` to the next assignment in lexicographic order over
/// `1..=domain`; false once every assignment has been visited.
fn advance(values: &mut [i64], domain: i64) -> bool {
    for v in values.iter_mut().rev() {
        if *v < domain {
            *v += 1;
            return true;
        }
        *v = 1;
    }
    false
}

/// Builds the engine for `cfg` and runs it to quiescence.
pub fn run_to_quiescence(cfg: EngineConfig) -> Result<Vec<Run>, EngineError> {
    Engine::new(cfg)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{parse_order, parse_rules};

    fn ev(s: &str) -> Event {
        s.parse().unwrap()
    }

    fn hist(events: &[&str]) -> History {
        History::from_events(events.iter().map(|s| ev(s))).unwrap()
    }

    fn holds(h: &History, a: &str) -> bool {
        entails(h, &parse_order(a).unwrap(), &Binding::new()).unwrap()
    }

    #[test]
    fn free_index_is_existential() {
        let h = hist(&["ask[x_1]", "abort"]);
        assert!(holds(&h, "ask[x_i]"));
        assert!(!holds(&h, "ask[x_i] & i > 1"));
        assert!(holds(&h, "ask[x_1] -> abort"));
        assert!(!holds(&h, "abort -> ask[x_1]"));
    }

    #[test]
    fn sequences_need_all_events() {
        assert!(!holds(&hist(&["ask[x_1]"]), "ask[x_1] -> x_1 := v_1"));
        let h = hist(&["C: ping[x_1]", "S: x_1 := pong"]);
        assert!(holds(&h, "C: ping[x_1] -> S: x_1 := pong"));
        assert!(holds(&h, "C: ping[x_i] -> S: x_i := pong"));
    }

    #[test]
    fn choice_is_exclusive() {
        let h = hist(&["a", "b"]);
        assert!(holds(&h, "a | c"));
        assert!(!holds(&h, "a | b"));
        assert!(!holds(&h, "c | d"));
        assert!(holds(&h, "!(a | b)"));
    }

    #[test]
    fn quantifiers_and_relations() {
        let h = hist(&["I: ask[x_1]", "I: ask[x_2]"]);
        assert!(holds(&h, "forall i. i > 2 | I: ask[x_i]"));
        assert!(!holds(&h, "forall i. I: ask[x_i]"));
        assert!(holds(&h, "exists i. I: ask[x_i] & i = 2"));
        assert!(holds(&h, "1 < 2 =< 2"));
        assert!(holds(&History::new(), "empty"));
        assert!(holds(&History::new(), "true & !false"));
    }

    #[test]
    fn unbound_parameters_are_errors() {
        let x = parse_order("I: ask[x_i] & i =< n").unwrap();
        let h = hist(&["I: ask[x_1]"]);
        // n is free, hence existential
        assert!(entails(&h, &x, &Binding::new()).unwrap());
        assert!(!entails(&h, &x, &Binding::new().nat("n", 0)).unwrap());
        let f = OrderExpr::Flag("w".into());
        assert_eq!(
            entails(&h, &f, &Binding::new()),
            Err(EntailError::Unbound("w".into()))
        );
        assert_eq!(
            entails(&h, &f, &Binding::new().nat("w", 1)),
            Err(EntailError::NotAFlag("w".into()))
        );
    }

    fn ping_pong(n: Option<i64>) -> Vec<Module> {
        let client = match n {
            None => "module client\nC: ping[x_1] <= !C: ping[x_1]\nC: ping[x_i] <= S: x_{i-1} := pong\n",
            Some(_) => "module client\nparam n : nat\nC: ping[x_1] <= !C: ping[x_1] & n > 0\nC: ping[x_i] <= S: x_{i-1} := pong & i =< n\n",
        };
        let server = "module server\nS: x_i := pong <= C: ping[x_i]\n";
        let params = n.map_or(Binding::new(), |n| Binding::new().nat("n", n));
        vec![
            Module::new(parse_rules(client).unwrap(), params),
            Module::new(parse_rules(server).unwrap(), Binding::new()),
        ]
    }

    #[test]
    fn ping_pong_steps() {
        let engine = Engine::new(EngineConfig::new(ping_pong(None)).max_steps(50)).unwrap();
        let mut h = History::new();
        for expected in ["C: ping[x_1]", "S: x_1 := pong", "C: ping[x_2]"] {
            let en = engine.enabled(&h).unwrap();
            assert_eq!(en.len(), 1, "{h}");
            assert_eq!(en[0].event, ev(expected));
            h.push(en[0].event.clone()).unwrap();
        }
        let err = engine.run_seeded(1).unwrap_err();
        assert!(matches!(err, EngineError::StepCap { .. }));
    }

    #[test]
    fn bounded_ping_pong() {
        let cfg = EngineConfig::new(ping_pong(Some(2))).scheduler(Scheduler::Exhaustive);
        let runs = run_to_quiescence(cfg).unwrap();
        assert_eq!(runs.len(), 1);
        assert_eq!(runs[0].history.len(), 4);
    }

    #[test]
    fn empty_rule_set() {
        let rs = parse_rules("module nothing\n").unwrap();
        let cfg = EngineConfig::new(vec![Module::new(rs, Binding::new())])
            .scheduler(Scheduler::Exhaustive);
        let runs = run_to_quiescence(cfg).unwrap();
        assert_eq!(runs.len(), 1);
        assert!(runs[0].history.is_empty());
    }

    #[test]
    fn missing_parameter_rejected() {
        let mut modules = ping_pong(Some(1));
        modules[0].params = Binding::new();
        assert!(matches!(
            Engine::new(EngineConfig::new(modules)),
            Err(EngineError::Config(_))
        ));
    }

    #[test]
    fn exhaustive_explores_interleavings() {
        let rs = parse_rules("module two\nA: a_1 <= true\nB: b_1 <= true\n").unwrap();
        let cfg = EngineConfig::new(vec![Module::new(rs, Binding::new())])
            .scheduler(Scheduler::Exhaustive);
        let engine = Engine::new(cfg).unwrap();
        let runs = engine.run().unwrap();
        assert_eq!(runs.len(), 2);
        for r in &runs {
            assert!(engine.replay(r).unwrap());
        }
    }
}
