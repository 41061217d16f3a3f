//! Line-oriented block grammar for deployment manifests.
//!
//! ```text
//! fabric { fpgas = 1  cpus_per_fpga = 2  shm_words = 1024  shm_cycle_us = 100 }
//! host { spike_latency_us = 8000  spike_probability = 0.3  seed = 7 }
//! topic "imu_raw" { type Imu { gyro: f32[3]  accel: f32[3] } }
//! service "reset" { request Empty {}  response Ack { ok: bool } }
//! component "filter" {
//!   placement = softcore 0 0        # or: host | gateware <block>
//!   behavior = "lowpass"
//!   thread "main" { period_us = 1000  budget_us = 200 }
//!   subscribe "imu_raw"   publish "imu_filtered"
//! }
//! ```

use std::collections::{BTreeMap, BTreeSet};

use crate::model::{
    ComponentSpec, CpuId, FieldType, MessageType, Placement, Primitive, ServiceSpec, Subject,
    Target, ThreadSpec, TopicSpec,
};
use crate::runtime::JitterModel;

use super::{FabricConfig, HostConfig, Manifest, ManifestError};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Int(i64),
    Float(f64),
    Sym(char),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Str(s) => format!("\"{s}\""),
            Tok::Int(i) => i.to_string(),
            Tok::Float(f) => f.to_string(),
            Tok::Sym(c) => format!("`{c}`"),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Spanned>, ManifestError> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                i += 1;
                col += 1;
            }
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '{' | '}' | '=' | ':' | '[' | ']' => {
                out.push(Spanned {
                    tok: Tok::Sym(c),
                    line: tl,
                    col: tc,
                });
                i += 1;
                col += 1;
            }
            '"' => {
                let mut s = String::new();
                i += 1;
                col += 1;
                loop {
                    match chars.get(i) {
                        None | Some('\n') => {
                            return Err(ManifestError::Syntax {
                                line: tl,
                                col: tc,
                                expected: "closing `\"`".into(),
                                found: "end of line".into(),
                            })
                        }
                        Some('"') => {
                            i += 1;
                            col += 1;
                            break;
                        }
                        Some(&ch) => {
                            s.push(ch);
                            i += 1;
                            col += 1;
                        }
                    }
                }
                out.push(Spanned {
                    tok: Tok::Str(s),
                    line: tl,
                    col: tc,
                });
            }
            c if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) => {
                let start = i;
                i += 1;
                while i < chars.len()
                    && (chars[i].is_ascii_digit()
                        || chars[i] == '.'
                        || chars[i] == '_'
                        || chars[i] == 'e'
                        || chars[i] == 'E'
                        || ((chars[i] == '-' || chars[i] == '+')
                            && matches!(chars[i - 1], 'e' | 'E')))
                {
                    i += 1;
                }
                let raw: String = chars[start..i].iter().filter(|&&c| c != '_').collect();
                col += i - start;
                let tok = if raw.contains(['.', 'e', 'E']) {
                    raw.parse::<f64>().map(Tok::Float)
                        .map_err(|_| ManifestError::Syntax {
                            line: tl,
                            col: tc,
                            expected: "number".into(),
                            found: raw.clone(),
                        })?
                } else {
                    raw.parse::<i64>().map(Tok::Int).map_err(|_| ManifestError::Syntax {
                        line: tl,
                        col: tc,
                        expected: "integer".into(),
                        found: raw.clone(),
                    })?
                };
                out.push(Spanned { tok, line: tl, col: tc });
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                col += i - start;
                out.push(Spanned {
                    tok: Tok::Ident(chars[start..i].iter().collect()),
                    line: tl,
                    col: tc,
                });
            }
            other => {
                return Err(ManifestError::Syntax {
                    line: tl,
                    col: tc,
                    expected: "token".into(),
                    found: format!("`{other}`"),
                })
            }
        }
    }
    out.push(Spanned {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if !matches!(t.tok, Tok::Eof) {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, expected: &str) -> Result<T, ManifestError> {
        let t = self.peek();
        Err(ManifestError::Syntax {
            line: t.line,
            col: t.col,
            expected: expected.into(),
            found: t.tok.describe(),
        })
    }

    fn sym(&mut self, c: char) -> Result<(), ManifestError> {
        if self.peek().tok == Tok::Sym(c) {
            self.next();
            Ok(())
        } else {
            self.err(&format!("`{c}`"))
        }
    }

    fn is_sym(&self, c: char) -> bool {
        self.peek().tok == Tok::Sym(c)
    }

    fn ident(&mut self) -> Result<String, ManifestError> {
        match &self.peek().tok {
            Tok::Ident(s) => {
                let s = s.clone();
                self.next();
                Ok(s)
            }
            _ => self.err("identifier"),
        }
    }

    fn string(&mut self) -> Result<String, ManifestError> {
        match &self.peek().tok {
            Tok::Str(s) => {
                let s = s.clone();
                self.next();
                Ok(s)
            }
            _ => self.err("quoted name"),
        }
    }

    fn name(&mut self) -> Result<String, ManifestError> {
        match &self.peek().tok {
            Tok::Str(s) | Tok::Ident(s) => {
                let s = s.clone();
                self.next();
                Ok(s)
            }
            _ => self.err("name"),
        }
    }

    fn int(&mut self) -> Result<i64, ManifestError> {
        match self.peek().tok {
            Tok::Int(v) => {
                self.next();
                Ok(v)
            }
            _ => self.err("integer"),
        }
    }

    fn uint(&mut self) -> Result<u64, ManifestError> {
        let t = self.peek().clone();
        let v = self.int()?;
        u64::try_from(v).map_err(|_| ManifestError::Syntax {
            line: t.line,
            col: t.col,
            expected: "non-negative integer".into(),
            found: v.to_string(),
        })
    }

    fn number(&mut self) -> Result<f64, ManifestError> {
        match self.peek().tok {
            Tok::Int(v) => {
                self.next();
                Ok(v as f64)
            }
            Tok::Float(v) => {
                self.next();
                Ok(v)
            }
            _ => self.err("number"),
        }
    }
}

#[derive(Default)]
struct Builder {
    types: BTreeMap<String, MessageType>,
    topics: Vec<TopicSpec>,
    services: Vec<ServiceSpec>,
    components: Vec<ComponentSpec>,
    placements: Vec<Placement>,
    fabric: Option<FabricConfig>,
    host: Option<HostConfig>,
    lines: BTreeMap<Subject, usize>,
}

/// Parses manifest text. All type invariants hold on the returned value.
pub fn parse_manifest(text: &str) -> Result<Manifest, ManifestError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let mut b = Builder::default();
    loop {
        let t = p.peek().clone();
        match &t.tok {
            Tok::Eof => break,
            Tok::Ident(kw) => match kw.as_str() {
                "fabric" => {
                    p.next();
                    if b.fabric.is_some() {
                        return Err(ManifestError::DuplicateName {
                            line: t.line,
                            kind: "block",
                            name: "fabric".into(),
                        });
                    }
                    b.fabric = Some(parse_fabric(&mut p, t.line)?);
                    b.lines.insert(Subject::Fabric, t.line);
                }
                "host" => {
                    p.next();
                    if b.host.is_some() {
                        return Err(ManifestError::DuplicateName {
                            line: t.line,
                            kind: "block",
                            name: "host".into(),
                        });
                    }
                    b.host = Some(parse_host(&mut p, t.line)?);
                }
                "topic" => {
                    p.next();
                    parse_topic(&mut p, &mut b, t.line)?;
                }
                "service" => {
                    p.next();
                    parse_service(&mut p, &mut b, t.line)?;
                }
                "component" => {
                    p.next();
                    parse_component(&mut p, &mut b, t.line)?;
                }
                _ => return p.err("`fabric`, `host`, `topic`, `service` or `component`"),
            },
            _ => return p.err("`fabric`, `host`, `topic`, `service` or `component`"),
        }
    }
    finish(b)
}

fn parse_fabric(p: &mut Parser, line: usize) -> Result<FabricConfig, ManifestError> {
    let mut f = FabricConfig::default();
    p.sym('{')?;
    while !p.is_sym('}') {
        let kt = p.peek().clone();
        let key = p.ident()?;
        p.sym('=')?;
        match key.as_str() {
            "fpgas" => f.n_fpgas = p.uint()? as u32,
            "cpus_per_fpga" => f.cpus_per_fpga = p.uint()? as u32,
            "shm_words" => f.shm_words_total = p.uint()? as u32,
            "shm_cycle_us" => f.shm_cycle_us = p.uint()?,
            "link_bytes_per_ms" => f.link_baud_bytes_per_ms = Some(p.uint()?),
            "bus_delay_us" => f.bus_delay_us = p.uint()?,
            _ => {
                return Err(ManifestError::Syntax {
                    line: kt.line,
                    col: kt.col,
                    expected: "fabric key".into(),
                    found: format!("`{key}`"),
                })
            }
        }
    }
    p.sym('}')?;
    let bad = |msg: &str| ManifestError::InvariantViolation {
        line,
        message: msg.to_string(),
    };
    if f.n_fpgas == 0 || f.cpus_per_fpga == 0 {
        return Err(bad("fabric needs at least one fpga and one cpu"));
    }
    if f.shm_words_total == 0 {
        return Err(bad("shm_words must be > 0"));
    }
    if f.shm_cycle_us == 0 {
        return Err(bad("shm_cycle_us must be > 0"));
    }
    if f.link_baud_bytes_per_ms == Some(0) {
        return Err(bad("link_bytes_per_ms must be > 0 (omit it for an unlimited link)"));
    }
    Ok(f)
}

fn parse_host(p: &mut Parser, line: usize) -> Result<HostConfig, ManifestError> {
    let mut j = JitterModel::default();
    p.sym('{')?;
    while !p.is_sym('}') {
        let kt = p.peek().clone();
        let key = p.ident()?;
        p.sym('=')?;
        match key.as_str() {
            "base_latency_us" => j.base_latency_us = p.uint()?,
            "spike_latency_us" => j.spike_latency_us = p.uint()?,
            "spike_probability" => j.spike_probability = p.number()?,
            "seed" => j.rng_seed = p.uint()?,
            _ => {
                return Err(ManifestError::Syntax {
                    line: kt.line,
                    col: kt.col,
                    expected: "host key".into(),
                    found: format!("`{key}`"),
                })
            }
        }
    }
    p.sym('}')?;
    if !(0.0..=1.0).contains(&j.spike_probability) {
        return Err(ManifestError::InvariantViolation {
            line,
            message: format!(
                "spike_probability {} outside [0, 1]",
                j.spike_probability
            ),
        });
    }
    Ok(HostConfig { jitter: j })
}

fn parse_field_type(p: &mut Parser) -> Result<FieldType, ManifestError> {
    let t = p.peek().clone();
    let name = p.ident()?;
    let prim = Primitive::from_name(&name).ok_or_else(|| ManifestError::Syntax {
        line: t.line,
        col: t.col,
        expected: "primitive type (bool, u8..u64, i8..i64, f32, f64)".into(),
        found: format!("`{name}`"),
    })?;
    if p.is_sym('[') {
        p.next();
        let n = p.uint()? as usize;
        p.sym(']')?;
        if n == 0 {
            return Err(ManifestError::InvariantViolation {
                line: t.line,
                message: "array length must be > 0".into(),
            });
        }
        Ok(FieldType::Array(prim, n))
    } else {
        Ok(FieldType::Scalar(prim))
    }
}

/// `Name` referencing an earlier definition, or `Name { field: ty ... }`.
fn parse_type_ref(p: &mut Parser, b: &mut Builder) -> Result<MessageType, ManifestError> {
    let t = p.peek().clone();
    let name = p.ident()?;
    if !p.is_sym('{') {
        return b
            .types
            .get(&name)
            .cloned()
            .ok_or(ManifestError::UnknownReference {
                line: t.line,
                kind: "message type",
                name,
            });
    }
    p.next();
    let mut fields = Vec::new();
    while !p.is_sym('}') {
        let ft = p.peek().clone();
        let fname = p.ident()?;
        p.sym(':')?;
        let ty = parse_field_type(p)?;
        if fields.iter().any(|(n, _): &(String, FieldType)| *n == fname) {
            return Err(ManifestError::DuplicateName {
                line: ft.line,
                kind: "field",
                name: fname,
            });
        }
        fields.push((fname, ty));
    }
    p.next();
    let ty = MessageType::new(name.clone(), fields).map_err(|e| ManifestError::InvariantViolation {
        line: t.line,
        message: e.to_string(),
    })?;
    match b.types.get(&name) {
        Some(prev) if prev != &ty => Err(ManifestError::DuplicateName {
            line: t.line,
            kind: "message type",
            name,
        }),
        _ => {
            b.types.insert(name, ty.clone());
            Ok(ty)
        }
    }
}

fn parse_topic(p: &mut Parser, b: &mut Builder, line: usize) -> Result<(), ManifestError> {
    let name = p.string()?;
    if b.topics.iter().any(|t| t.name == name) {
        return Err(ManifestError::DuplicateName {
            line,
            kind: "topic",
            name,
        });
    }
    p.sym('{')?;
    let kt = p.peek().clone();
    if p.ident()? != "type" {
        return Err(ManifestError::Syntax {
            line: kt.line,
            col: kt.col,
            expected: "`type`".into(),
            found: kt.tok.describe(),
        });
    }
    let ty = parse_type_ref(p, b)?;
    p.sym('}')?;
    if ty.fields().is_empty() {
        return Err(ManifestError::InvariantViolation {
            line,
            message: format!("topic `{name}` has a message type without fields"),
        });
    }
    b.lines.insert(Subject::Topic(name.clone()), line);
    b.topics.push(TopicSpec { name, ty });
    Ok(())
}

fn parse_service(p: &mut Parser, b: &mut Builder, line: usize) -> Result<(), ManifestError> {
    let name = p.string()?;
    if b.services.iter().any(|s| s.name == name) {
        return Err(ManifestError::DuplicateName {
            line,
            kind: "service",
            name,
        });
    }
    p.sym('{')?;
    let mut request = None;
    let mut response = None;
    while !p.is_sym('}') {
        let kt = p.peek().clone();
        match p.ident()?.as_str() {
            "request" => request = Some(parse_type_ref(p, b)?),
            "response" => response = Some(parse_type_ref(p, b)?),
            _ => {
                return Err(ManifestError::Syntax {
                    line: kt.line,
                    col: kt.col,
                    expected: "`request` or `response`".into(),
                    found: kt.tok.describe(),
                })
            }
        }
    }
    p.next();
    let (Some(request), Some(response)) = (request, response) else {
        return Err(ManifestError::InvariantViolation {
            line,
            message: format!("service `{name}` needs both request and response types"),
        });
    };
    b.lines.insert(Subject::Service(name.clone()), line);
    b.services.push(ServiceSpec {
        name,
        request,
        response,
    });
    Ok(())
}

fn parse_thread(p: &mut Parser) -> Result<ThreadSpec, ManifestError> {
    let line = p.peek().line;
    let name = p.string()?;
    p.sym('{')?;
    let mut period = None;
    let mut budget = None;
    let mut deadline = None;
    let mut priority = None;
    while !p.is_sym('}') {
        let kt = p.peek().clone();
        let key = p.ident()?;
        p.sym('=')?;
        match key.as_str() {
            "period_us" => period = Some(p.uint()?),
            "budget_us" => budget = Some(p.uint()?),
            "deadline_us" => deadline = Some(p.uint()?),
            "priority" => priority = Some(p.int()?),
            _ => {
                return Err(ManifestError::Syntax {
                    line: kt.line,
                    col: kt.col,
                    expected: "thread key".into(),
                    found: format!("`{key}`"),
                })
            }
        }
    }
    p.next();
    let (Some(period_us), Some(budget_us)) = (period, budget) else {
        return Err(ManifestError::InvariantViolation {
            line,
            message: format!("thread `{name}` needs period_us and budget_us"),
        });
    };
    let t = ThreadSpec {
        name,
        period_us,
        budget_us,
        deadline_us: deadline.unwrap_or(period_us),
        priority,
    };
    t.check()
        .map_err(|message| ManifestError::InvariantViolation { line, message })?;
    Ok(t)
}

fn parse_component(p: &mut Parser, b: &mut Builder, line: usize) -> Result<(), ManifestError> {
    let name = p.string()?;
    if b.components.iter().any(|c| c.name == name) {
        return Err(ManifestError::DuplicateName {
            line,
            kind: "component",
            name,
        });
    }
    let mut c = ComponentSpec::new(name.clone(), name.clone());
    let mut target = None;
    p.sym('{')?;
    while !p.is_sym('}') {
        let kt = p.peek().clone();
        let kw = p.ident()?;
        match kw.as_str() {
            "placement" => {
                p.sym('=')?;
                if target.is_some() {
                    return Err(ManifestError::InvariantViolation {
                        line: kt.line,
                        message: format!("component `{name}` has more than one placement"),
                    });
                }
                let wt = p.peek().clone();
                target = Some(match p.ident()?.as_str() {
                    "host" => Target::Host,
                    "softcore" => {
                        let fpga = p.uint()? as u32;
                        let cpu = p.uint()? as u32;
                        Target::Softcore(CpuId::new(fpga, cpu))
                    }
                    "gateware" => Target::Gateware(p.name()?),
                    _ => {
                        return Err(ManifestError::Syntax {
                            line: wt.line,
                            col: wt.col,
                            expected: "`host`, `softcore` or `gateware`".into(),
                            found: wt.tok.describe(),
                        })
                    }
                });
            }
            "behavior" => {
                p.sym('=')?;
                c.behavior = p.name()?;
            }
            "thread" => {
                let t = parse_thread(p)?;
                if c.threads.iter().any(|x| x.name == t.name) {
                    return Err(ManifestError::DuplicateName {
                        line: kt.line,
                        kind: "thread",
                        name: format!("{name}.{}", t.name),
                    });
                }
                c.threads.push(t);
            }
            "publish" | "subscribe" | "provide" | "call" => {
                let list = match kw.as_str() {
                    "publish" => &mut c.publishes,
                    "subscribe" => &mut c.subscribes,
                    "provide" => &mut c.provides,
                    _ => &mut c.calls,
                };
                if !matches!(p.peek().tok, Tok::Str(_)) {
                    return p.err("quoted name");
                }
                while let Tok::Str(s) = &p.peek().tok {
                    let s = s.clone();
                    p.next();
                    if !list.contains(&s) {
                        list.push(s);
                    }
                }
            }
            _ => {
                return Err(ManifestError::Syntax {
                    line: kt.line,
                    col: kt.col,
                    expected: "component item".into(),
                    found: kt.tok.describe(),
                })
            }
        }
    }
    p.next();
    let Some(target) = target else {
        return Err(ManifestError::InvariantViolation {
            line,
            message: format!("component `{name}` has no placement"),
        });
    };
    if c.threads.is_empty() {
        return Err(ManifestError::InvariantViolation {
            line,
            message: format!("component `{name}` declares no thread"),
        });
    }
    b.lines.insert(Subject::Component(name.clone()), line);
    b.placements.push(Placement {
        component: name,
        target,
    });
    b.components.push(c);
    Ok(())
}

fn finish(b: Builder) -> Result<Manifest, ManifestError> {
    let fabric = b.fabric.unwrap_or_default();
    let topics: BTreeSet<&str> = b.topics.iter().map(|t| t.name.as_str()).collect();
    let services: BTreeSet<&str> = b.services.iter().map(|s| s.name.as_str()).collect();
    for c in &b.components {
        let line = b.lines[&Subject::Component(c.name.clone())];
        for t in c.publishes.iter().chain(&c.subscribes) {
            if !topics.contains(t.as_str()) {
                return Err(ManifestError::UnknownReference {
                    line,
                    kind: "topic",
                    name: t.clone(),
                });
            }
        }
        for s in c.provides.iter().chain(&c.calls) {
            if !services.contains(s.as_str()) {
                return Err(ManifestError::UnknownReference {
                    line,
                    kind: "service",
                    name: s.clone(),
                });
            }
        }
    }
    for pl in &b.placements {
        if let Target::Softcore(cpu) = pl.target {
            if cpu.fpga >= fabric.n_fpgas || cpu.cpu >= fabric.cpus_per_fpga {
                return Err(ManifestError::InvariantViolation {
                    line: b.lines[&Subject::Component(pl.component.clone())],
                    message: format!(
                        "component `{}` placed on softcore {cpu}, but the fabric has {} fpga(s) with {} cpu(s) each",
                        pl.component, fabric.n_fpgas, fabric.cpus_per_fpga
                    ),
                });
            }
        }
    }
    Ok(Manifest {
        topics: b.topics,
        services: b.services,
        components: b.components,
        placements: b.placements,
        fabric,
        host: b.host.unwrap_or_default(),
        source_lines: b.lines,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        topic "t" { type T { x: f32 } }
        component "a" {
          placement = host
          thread "main" { period_us = 1000 budget_us = 100 }
          publish "t"
        }
    "#;

    #[test]
    fn minimal_host_manifest() {
        let m = parse_manifest(MINIMAL).unwrap();
        assert_eq!(m.components.len(), 1);
        assert_eq!(m.placements[0].target, Target::Host);
        assert_eq!(m.components[0].behavior, "a");
        assert_eq!(m.fabric.shm_words_total, 1024);
        assert_eq!(m.fabric.shm_cycle_us, 100);
    }

    #[test]
    fn budget_over_period_is_invariant_violation() {
        let text = r#"
            component "a" {
              placement = host
              thread "main" { period_us = 1000 budget_us = 1500 }
            }
        "#;
        let err = parse_manifest(text).unwrap_err();
        assert!(
            matches!(err, ManifestError::InvariantViolation { line: 4, .. }),
            "{err:?}"
        );
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_manifest("topic \"t\" { type T { x f32 } }").unwrap_err();
        match err {
            ManifestError::Syntax { line, col, expected, .. } => {
                assert_eq!((line, col), (1, 24));
                assert_eq!(expected, "`:`");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_topic() {
        let text = r#"
            topic "t" { type T { x: f32 } }
            topic "t" { type T }
        "#;
        assert!(matches!(
            parse_manifest(text),
            Err(ManifestError::DuplicateName { kind: "topic", .. })
        ));
    }

    #[test]
    fn conflicting_type_redefinition() {
        let text = r#"
            topic "a" { type T { x: f32 } }
            topic "b" { type T { x: f64 } }
        "#;
        assert!(matches!(
            parse_manifest(text),
            Err(ManifestError::DuplicateName { kind: "message type", .. })
        ));
    }

    #[test]
    fn unknown_topic_reference() {
        let text = r#"
            component "a" {
              placement = host
              thread "main" { period_us = 10 budget_us = 1 }
              subscribe "ghost"
            }
        "#;
        assert!(matches!(
            parse_manifest(text),
            Err(ManifestError::UnknownReference { kind: "topic", .. })
        ));
    }

    #[test]
    fn softcore_out_of_range() {
        let text = r#"
            fabric { fpgas = 1 cpus_per_fpga = 2 shm_words = 64 shm_cycle_us = 100 }
            component "a" {
              placement = softcore 0 2
              thread "main" { period_us = 10 budget_us = 1 }
            }
        "#;
        assert!(matches!(
            parse_manifest(text),
            Err(ManifestError::InvariantViolation { .. })
        ));
    }

    #[test]
    fn full_syntax() {
        let text = r#"
            # comment
            fabric { fpgas = 1  cpus_per_fpga = 2  shm_words = 1024  shm_cycle_us = 100 link_bytes_per_ms = 64 bus_delay_us = 50 }
            host { base_latency_us = 10 spike_latency_us = 8000 spike_probability = 0.25 seed = 3 }
            topic "imu_raw" { type Imu { gyro: f32[3]  accel: f32[3] } }
            topic "imu_filtered" { type Imu }
            service "reset" { request Empty {}  response Ack { ok: bool } }
            component "filter" {
              placement = softcore 0 0        # or: host | gateware <block>
              behavior = "lowpass"
              thread "main" { period_us = 1000  budget_us = 200 }   # optional: priority, deadline_us
              thread "aux" { period_us = 2000  budget_us = 100 priority = 5 deadline_us = 1500 }
              subscribe "imu_raw"   publish "imu_filtered"
              provide "reset"
            }
        "#;
        let m = parse_manifest(text).unwrap();
        assert_eq!(m.fabric.link_baud_bytes_per_ms, Some(64));
        assert_eq!(m.fabric.bus_delay_us, 50);
        assert_eq!(m.host.jitter.spike_latency_us, 8000);
        assert_eq!(m.host.jitter.rng_seed, 3);
        assert_eq!(m.topics[1].ty.encoded_size(), 24);
        assert_eq!(m.services[0].request.fields().len(), 0);
        let c = &m.components[0];
        assert_eq!(c.behavior, "lowpass");
        assert_eq!(c.threads[1].priority, Some(5));
        assert_eq!(c.threads[1].deadline_us, 1500);
        assert_eq!(m.line_of(&Subject::Component("filter".into())), Some(8));
    }

    #[test]
    fn unterminated_string() {
        assert!(matches!(
            parse_manifest("topic \"t { }"),
            Err(ManifestError::Syntax { .. })
        ));
    }
}
