//! Domain types shared by every other module: message types with fixed-size
//! slot layouts, topic/service/component descriptions, placements, and the
//! connection-graph validator.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

/// Shared-memory word size in bytes.
pub const WORD_BYTES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Primitive {
    Bool,
    U8,
    I8,
    U16,
    I16,
    U32,
    I32,
    U64,
    I64,
    F32,
    F64,
}

impl Primitive {
    pub const ALL: [Primitive; 11] = [
        Primitive::Bool,
        Primitive::U8,
        Primitive::I8,
        Primitive::U16,
        Primitive::I16,
        Primitive::U32,
        Primitive::I32,
        Primitive::U64,
        Primitive::I64,
        Primitive::F32,
        Primitive::F64,
    ];

    pub fn size_bytes(self) -> usize {
        match self {
            Primitive::Bool | Primitive::U8 | Primitive::I8 => 1,
            Primitive::U16 | Primitive::I16 => 2,
            Primitive::U32 | Primitive::I32 | Primitive::F32 => 4,
            Primitive::U64 | Primitive::I64 | Primitive::F64 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Primitive::Bool => "bool",
            Primitive::U8 => "u8",
            Primitive::I8 => "i8",
            Primitive::U16 => "u16",
            Primitive::I16 => "i16",
            Primitive::U32 => "u32",
            Primitive::I32 => "i32",
            Primitive::U64 => "u64",
            Primitive::I64 => "i64",
            Primitive::F32 => "f32",
            Primitive::F64 => "f64",
        }
    }

    pub fn from_name(name: &str) -> Option<Primitive> {
        Primitive::ALL.into_iter().find(|p| p.name() == name)
    }

    /// The all-zero value of this primitive.
    pub fn zero(self) -> Scalar {
        match self {
            Primitive::Bool => Scalar::Bool(false),
            Primitive::U8 => Scalar::U8(0),
            Primitive::I8 => Scalar::I8(0),
            Primitive::U16 => Scalar::U16(0),
            Primitive::I16 => Scalar::I16(0),
            Primitive::U32 => Scalar::U32(0),
            Primitive::I32 => Scalar::I32(0),
            Primitive::U64 => Scalar::U64(0),
            Primitive::I64 => Scalar::I64(0),
            Primitive::F32 => Scalar::F32(0.0),
            Primitive::F64 => Scalar::F64(0.0),
        }
    }
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A field is either a primitive or a fixed-length array of one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FieldType {
    Scalar(Primitive),
    Array(Primitive, usize),
}

impl FieldType {
    pub fn size_bytes(self) -> usize {
        match self {
            FieldType::Scalar(p) => p.size_bytes(),
            FieldType::Array(p, n) => p.size_bytes() * n,
        }
    }

    pub fn primitive(self) -> Primitive {
        match self {
            FieldType::Scalar(p) | FieldType::Array(p, _) => p,
        }
    }
}

impl fmt::Display for FieldType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldType::Scalar(p) => write!(f, "{p}"),
            FieldType::Array(p, n) => write!(f, "{p}[{n}]"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("duplicate field `{field}` in message type `{ty}`")]
    DuplicateField { ty: String, field: String },
    #[error("zero-length array field `{field}` in message type `{ty}`")]
    EmptyArray { ty: String, field: String },
    #[error("message of type `{expected}` expected, got `{found}`")]
    TypeMismatch { expected: String, found: String },
    #[error("field `{field}` of `{ty}` does not match its declared type {declared}")]
    FieldMismatch {
        ty: String,
        field: String,
        declared: FieldType,
    },
    #[error("message type `{ty}` has no field `{field}`")]
    NoSuchField { ty: String, field: String },
    #[error("buffer of {got} bytes too short for `{ty}` ({need} bytes)")]
    ShortBuffer { ty: String, need: usize, got: usize },
}

/// A fixed-size message type. Construction enforces unique field names and
/// non-empty arrays, so every value has a statically known encoding.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MessageType {
    name: String,
    fields: Vec<(String, FieldType)>,
}

impl MessageType {
    pub fn new(
        name: impl Into<String>,
        fields: Vec<(String, FieldType)>,
    ) -> Result<MessageType, ModelError> {
        let name = name.into();
        let mut seen = BTreeSet::new();
        for (field, ty) in &fields {
            if !seen.insert(field.as_str()) {
                return Err(ModelError::DuplicateField {
                    ty: name,
                    field: field.clone(),
                });
            }
            if let FieldType::Array(_, 0) = ty {
                return Err(ModelError::EmptyArray {
                    ty: name,
                    field: field.clone(),
                });
            }
        }
        Ok(MessageType { name, fields })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn fields(&self) -> &[(String, FieldType)] {
        &self.fields
    }

    pub fn field_index(&self, field: &str) -> Option<usize> {
        self.fields.iter().position(|(n, _)| n == field)
    }

    pub fn encoded_size(&self) -> usize {
        self.fields.iter().map(|(_, t)| t.size_bytes()).sum()
    }

    /// Same field list, ignoring the type name.
    pub fn same_shape(&self, other: &MessageType) -> bool {
        self.fields == other.fields
    }
}

impl fmt::Display for MessageType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {{", self.name)?;
        for (i, (n, t)) in self.fields.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, " {n}: {t}")?;
        }
        f.write_str(" }")
    }
}

/// Where each field of a message lives inside its shared-memory slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotLayout {
    pub topic: String,
    pub size_words: usize,
    pub field_offsets: BTreeMap<String, usize>,
}

/// Packs fields in declaration order with no padding, then rounds the total up
/// to whole words.
pub fn slot_layout(topic: &str, ty: &MessageType) -> SlotLayout {
    let mut offset = 0;
    let mut field_offsets = BTreeMap::new();
    for (name, ft) in ty.fields() {
        field_offsets.insert(name.clone(), offset);
        offset += ft.size_bytes();
    }
    SlotLayout {
        topic: topic.to_string(),
        size_words: offset.div_ceil(WORD_BYTES),
        field_offsets,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scalar {
    Bool(bool),
    U8(u8),
    I8(i8),
    U16(u16),
    I16(i16),
    U32(u32),
    I32(i32),
    U64(u64),
    I64(i64),
    F32(f32),
    F64(f64),
}

impl Scalar {
    pub fn primitive(self) -> Primitive {
        match self {
            Scalar::Bool(_) => Primitive::Bool,
            Scalar::U8(_) => Primitive::U8,
            Scalar::I8(_) => Primitive::I8,
            Scalar::U16(_) => Primitive::U16,
            Scalar::I16(_) => Primitive::I16,
            Scalar::U32(_) => Primitive::U32,
            Scalar::I32(_) => Primitive::I32,
            Scalar::U64(_) => Primitive::U64,
            Scalar::I64(_) => Primitive::I64,
            Scalar::F32(_) => Primitive::F32,
            Scalar::F64(_) => Primitive::F64,
        }
    }

    /// Numeric view; booleans map to 0/1.
    pub fn as_f64(self) -> f64 {
        match self {
            Scalar::Bool(b) => f64::from(u8::from(b)),
            Scalar::U8(v) => f64::from(v),
            Scalar::I8(v) => f64::from(v),
            Scalar::U16(v) => f64::from(v),
            Scalar::I16(v) => f64::from(v),
            Scalar::U32(v) => f64::from(v),
            Scalar::I32(v) => f64::from(v),
            Scalar::U64(v) => v as f64,
            Scalar::I64(v) => v as f64,
            Scalar::F32(v) => f64::from(v),
            Scalar::F64(v) => v,
        }
    }

    /// Converts a float into a scalar of the given primitive (saturating for
    /// integers).
    pub fn from_f64(p: Primitive, v: f64) -> Scalar {
        match p {
            Primitive::Bool => Scalar::Bool(v != 0.0),
            Primitive::U8 => Scalar::U8(v as u8),
            Primitive::I8 => Scalar::I8(v as i8),
            Primitive::U16 => Scalar::U16(v as u16),
            Primitive::I16 => Scalar::I16(v as i16),
            Primitive::U32 => Scalar::U32(v as u32),
            Primitive::I32 => Scalar::I32(v as i32),
            Primitive::U64 => Scalar::U64(v as u64),
            Primitive::I64 => Scalar::I64(v as i64),
            Primitive::F32 => Scalar::F32(v as f32),
            Primitive::F64 => Scalar::F64(v),
        }
    }

    fn write_le(self, out: &mut Vec<u8>) {
        match self {
            Scalar::Bool(b) => out.push(u8::from(b)),
            Scalar::U8(v) => out.push(v),
            Scalar::I8(v) => out.extend_from_slice(&v.to_le_bytes()),
            Scalar::U16(v) => out.extend_from_slice(&v.to_le_bytes()),
            Scalar::I16(v) => out.extend_from_slice(&v.to_le_bytes()),
            Scalar::U32(v) => out.extend_from_slice(&v.to_le_bytes()),
            Scalar::I32(v) => out.extend_from_slice(&v.to_le_bytes()),
            Scalar::U64(v) => out.extend_from_slice(&v.to_le_bytes()),
            Scalar::I64(v) => out.extend_from_slice(&v.to_le_bytes()),
            Scalar::F32(v) => out.extend_from_slice(&v.to_le_bytes()),
            Scalar::F64(v) => out.extend_from_slice(&v.to_le_bytes()),
        }
    }

    fn read_le(p: Primitive, b: &[u8]) -> Scalar {
        match p {
            Primitive::Bool => Scalar::Bool(b[0] != 0),
            Primitive::U8 => Scalar::U8(b[0]),
            Primitive::I8 => Scalar::I8(i8::from_le_bytes([b[0]])),
            Primitive::U16 => Scalar::U16(u16::from_le_bytes([b[0], b[1]])),
            Primitive::I16 => Scalar::I16(i16::from_le_bytes([b[0], b[1]])),
            Primitive::U32 => Scalar::U32(u32::from_le_bytes(b[..4].try_into().unwrap())),
            Primitive::I32 => Scalar::I32(i32::from_le_bytes(b[..4].try_into().unwrap())),
            Primitive::U64 => Scalar::U64(u64::from_le_bytes(b[..8].try_into().unwrap())),
            Primitive::I64 => Scalar::I64(i64::from_le_bytes(b[..8].try_into().unwrap())),
            Primitive::F32 => Scalar::F32(f32::from_le_bytes(b[..4].try_into().unwrap())),
            Primitive::F64 => Scalar::F64(f64::from_le_bytes(b[..8].try_into().unwrap())),
        }
    }

    /// Bitwise equality (NaN-safe), used for round-trip checks.
    pub fn bits_eq(&self, other: &Scalar) -> bool {
        let mut a = Vec::new();
        let mut b = Vec::new();
        self.write_le(&mut a);
        other.write_le(&mut b);
        self.primitive() == other.primitive() && a == b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldValue {
    Scalar(Scalar),
    Array(Vec<Scalar>),
}

impl FieldValue {
    fn matches(&self, ty: FieldType) -> bool {
        match (self, ty) {
            (FieldValue::Scalar(s), FieldType::Scalar(p)) => s.primitive() == p,
            (FieldValue::Array(v), FieldType::Array(p, n)) => {
                v.len() == n && v.iter().all(|s| s.primitive() == p)
            }
            _ => false,
        }
    }

    fn zero(ty: FieldType) -> FieldValue {
        match ty {
            FieldType::Scalar(p) => FieldValue::Scalar(p.zero()),
            FieldType::Array(p, n) => FieldValue::Array(vec![p.zero(); n]),
        }
    }
}

/// A message value: one value per field, in the declaration order of its type.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    type_name: String,
    values: Vec<(String, FieldValue)>,
}

impl Message {
    /// An all-zero message of the given type.
    pub fn zeroed(ty: &MessageType) -> Message {
        Message {
            type_name: ty.name().to_string(),
            values: ty
                .fields()
                .iter()
                .map(|(n, t)| (n.clone(), FieldValue::zero(*t)))
                .collect(),
        }
    }

    /// Builds a message from numeric values, one per primitive element in
    /// field order (arrays are flattened).
    pub fn from_f64s(ty: &MessageType, values: &[f64]) -> Message {
        let mut it = values.iter().copied();
        let mut msg = Message::zeroed(ty);
        for ((_, val), (_, ft)) in msg.values.iter_mut().zip(ty.fields()) {
            match (val, ft) {
                (FieldValue::Scalar(s), FieldType::Scalar(p)) => {
                    *s = Scalar::from_f64(*p, it.next().unwrap_or(0.0));
                }
                (FieldValue::Array(v), FieldType::Array(p, _)) => {
                    for s in v.iter_mut() {
                        *s = Scalar::from_f64(*p, it.next().unwrap_or(0.0));
                    }
                }
                _ => unreachable!("zeroed message follows its type"),
            }
        }
        msg
    }

    pub fn type_name(&self) -> &str {
        &self.type_name
    }

    pub fn values(&self) -> &[(String, FieldValue)] {
        &self.values
    }

    pub fn get(&self, field: &str) -> Option<&FieldValue> {
        self.values.iter().find(|(n, _)| n == field).map(|(_, v)| v)
    }

    /// Scalar field (or first array element) as f64.
    pub fn f64(&self, field: &str) -> Option<f64> {
        match self.get(field)? {
            FieldValue::Scalar(s) => Some(s.as_f64()),
            FieldValue::Array(v) => v.first().map(|s| s.as_f64()),
        }
    }

    /// Array element (or scalar when `index == 0`) as f64.
    pub fn f64_at(&self, field: &str, index: usize) -> Option<f64> {
        match self.get(field)? {
            FieldValue::Scalar(s) if index == 0 => Some(s.as_f64()),
            FieldValue::Scalar(_) => None,
            FieldValue::Array(v) => v.get(index).map(|s| s.as_f64()),
        }
    }

    /// All primitive elements flattened in field order.
    pub fn to_f64s(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (_, v) in &self.values {
            match v {
                FieldValue::Scalar(s) => out.push(s.as_f64()),
                FieldValue::Array(a) => out.extend(a.iter().map(|s| s.as_f64())),
            }
        }
        out
    }

    pub fn set(&mut self, field: &str, value: FieldValue) -> Result<(), ModelError> {
        let slot = self
            .values
            .iter_mut()
            .find(|(n, _)| n == field)
            .ok_or_else(|| ModelError::NoSuchField {
                ty: self.type_name.clone(),
                field: field.to_string(),
            })?;
        slot.1 = value;
        Ok(())
    }

    /// Checks that this value conforms to `ty` (same name, fields, and
    /// primitive kinds).
    pub fn check(&self, ty: &MessageType) -> Result<(), ModelError> {
        if self.type_name != ty.name() || self.values.len() != ty.fields().len() {
            return Err(ModelError::TypeMismatch {
                expected: ty.name().to_string(),
                found: self.type_name.clone(),
            });
        }
        for ((n, v), (tn, tt)) in self.values.iter().zip(ty.fields()) {
            if n != tn || !v.matches(*tt) {
                return Err(ModelError::FieldMismatch {
                    ty: ty.name().to_string(),
                    field: tn.clone(),
                    declared: *tt,
                });
            }
        }
        Ok(())
    }

    /// Little-endian packed encoding, fields in declaration order.
    pub fn encode(&self, ty: &MessageType) -> Result<Vec<u8>, ModelError> {
        self.check(ty)?;
        let mut out = Vec::with_capacity(ty.encoded_size());
        for (_, v) in &self.values {
            match v {
                FieldValue::Scalar(s) => s.write_le(&mut out),
                FieldValue::Array(a) => a.iter().for_each(|s| s.write_le(&mut out)),
            }
        }
        Ok(out)
    }

    pub fn decode(ty: &MessageType, bytes: &[u8]) -> Result<Message, ModelError> {
        let need = ty.encoded_size();
        if bytes.len() < need {
            return Err(ModelError::ShortBuffer {
                ty: ty.name().to_string(),
                need,
                got: bytes.len(),
            });
        }
        let mut pos = 0;
        let mut values = Vec::with_capacity(ty.fields().len());
        for (name, ft) in ty.fields() {
            let p = ft.primitive();
            let sz = p.size_bytes();
            let v = match *ft {
                FieldType::Scalar(_) => {
                    let s = Scalar::read_le(p, &bytes[pos..pos + sz]);
                    pos += sz;
                    FieldValue::Scalar(s)
                }
                FieldType::Array(_, n) => {
                    let mut a = Vec::with_capacity(n);
                    for _ in 0..n {
                        a.push(Scalar::read_le(p, &bytes[pos..pos + sz]));
                        pos += sz;
                    }
                    FieldValue::Array(a)
                }
            };
            values.push((name.clone(), v));
        }
        Ok(Message {
            type_name: ty.name().to_string(),
            values,
        })
    }

    /// Encodes into whole little-endian words, zero padded.
    pub fn to_words(&self, ty: &MessageType) -> Result<Vec<u32>, ModelError> {
        let mut bytes = self.encode(ty)?;
        bytes.resize(bytes.len().div_ceil(WORD_BYTES) * WORD_BYTES, 0);
        Ok(bytes
            .chunks_exact(WORD_BYTES)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn from_words(ty: &MessageType, words: &[u32]) -> Result<Message, ModelError> {
        let bytes: Vec<u8> = words.iter().flat_map(|w| w.to_le_bytes()).collect();
        Message::decode(ty, &bytes)
    }

    /// Bitwise equality, treating NaNs with equal bits as equal.
    pub fn bits_eq(&self, other: &Message) -> bool {
        self.type_name == other.type_name
            && self.values.len() == other.values.len()
            && self.values.iter().zip(&other.values).all(|((na, a), (nb, b))| {
                na == nb
                    && match (a, b) {
                        (FieldValue::Scalar(x), FieldValue::Scalar(y)) => x.bits_eq(y),
                        (FieldValue::Array(x), FieldValue::Array(y)) => {
                            x.len() == y.len() && x.iter().zip(y).all(|(p, q)| p.bits_eq(q))
                        }
                        _ => false,
                    }
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicSpec {
    pub name: String,
    pub ty: MessageType,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceSpec {
    pub name: String,
    pub request: MessageType,
    pub response: MessageType,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThreadSpec {
    pub name: String,
    pub period_us: u64,
    pub budget_us: u64,
    pub deadline_us: u64,
    /// Higher number means higher priority. `None` gets a rate-monotonic
    /// assignment at compile time.
    pub priority: Option<i64>,
}

impl ThreadSpec {
    pub fn new(name: impl Into<String>, period_us: u64, budget_us: u64) -> ThreadSpec {
        ThreadSpec {
            name: name.into(),
            period_us,
            budget_us,
            deadline_us: period_us,
            priority: None,
        }
    }

    /// Checks `0 < budget <= deadline <= period`.
    pub fn check(&self) -> Result<(), String> {
        if self.period_us == 0 || self.budget_us == 0 || self.deadline_us == 0 {
            return Err(format!(
                "thread `{}`: period, budget and deadline must be > 0",
                self.name
            ));
        }
        if self.budget_us > self.deadline_us {
            return Err(format!(
                "thread `{}`: budget_us {} exceeds deadline_us {}",
                self.name, self.budget_us, self.deadline_us
            ));
        }
        if self.deadline_us > self.period_us {
            return Err(format!(
                "thread `{}`: deadline_us {} exceeds period_us {}",
                self.name, self.deadline_us, self.period_us
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentSpec {
    pub name: String,
    pub threads: Vec<ThreadSpec>,
    pub publishes: Vec<String>,
    pub subscribes: Vec<String>,
    pub provides: Vec<String>,
    pub calls: Vec<String>,
    /// Registered behavior identifier.
    pub behavior: String,
}

impl ComponentSpec {
    pub fn new(name: impl Into<String>, behavior: impl Into<String>) -> ComponentSpec {
        ComponentSpec {
            name: name.into(),
            threads: Vec::new(),
            publishes: Vec::new(),
            subscribes: Vec::new(),
            provides: Vec::new(),
            calls: Vec::new(),
            behavior: behavior.into(),
        }
    }
}

/// Identifier of a softcore CPU: `fpga.cpu`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CpuId {
    pub fpga: u32,
    pub cpu: u32,
}

impl CpuId {
    pub fn new(fpga: u32, cpu: u32) -> CpuId {
        CpuId { fpga, cpu }
    }
}

impl fmt::Display for CpuId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.fpga, self.cpu)
    }
}

/// Where a component executes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Target {
    Host,
    Softcore(CpuId),
    /// Replaced by a library gateware block with equivalent behavior.
    Gateware(String),
}

impl Target {
    pub fn is_fabric(&self) -> bool {
        !matches!(self, Target::Host)
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Host => f.write_str("host"),
            Target::Softcore(c) => write!(f, "softcore {} {}", c.fpga, c.cpu),
            Target::Gateware(b) => write!(f, "gateware {b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Placement {
    pub component: String,
    pub target: Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

/// What a diagnostic is about; used to map diagnostics back to source lines.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subject {
    Fabric,
    Topic(String),
    Service(String),
    Component(String),
    Cpu(CpuId),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Diagnostic {
    pub severity: Severity,
    pub subject: Option<Subject>,
    pub message: String,
}

impl Diagnostic {
    pub fn error(subject: Option<Subject>, message: impl Into<String>) -> Diagnostic {
        Diagnostic {
            severity: Severity::Error,
            subject,
            message: message.into(),
        }
    }

    pub fn warning(subject: Option<Subject>, message: impl Into<String>) -> Diagnostic {
        Diagnostic {
            severity: Severity::Warning,
            subject,
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.severity, self.message)
    }
}

/// Checks name resolution and connection rules of the component graph.
///
/// The result is sorted and deduplicated, so it does not depend on the order
/// in which components, topics, or services are declared.
pub fn validate_graph(
    components: &[ComponentSpec],
    topics: &[TopicSpec],
    services: &[ServiceSpec],
) -> Vec<Diagnostic> {
    let mut out = BTreeSet::new();
    let topic_names: BTreeSet<&str> = topics.iter().map(|t| t.name.as_str()).collect();
    let service_names: BTreeSet<&str> = services.iter().map(|s| s.name.as_str()).collect();

    let mut publishers: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut providers: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut callers: BTreeMap<&str, Vec<&str>> = BTreeMap::new();

    for c in components {
        let subj = || Some(Subject::Component(c.name.clone()));
        for t in c.publishes.iter().chain(&c.subscribes) {
            if !topic_names.contains(t.as_str()) {
                out.insert(Diagnostic::error(
                    subj(),
                    format!("component `{}` references unknown topic `{t}`", c.name),
                ));
            }
        }
        for s in c.provides.iter().chain(&c.calls) {
            if !service_names.contains(s.as_str()) {
                out.insert(Diagnostic::error(
                    subj(),
                    format!("component `{}` references unknown service `{s}`", c.name),
                ));
            }
        }
        for t in &c.publishes {
            publishers.entry(t).or_default().push(&c.name);
        }
        for s in &c.provides {
            providers.entry(s).or_default().push(&c.name);
            if c.calls.contains(s) {
                out.insert(Diagnostic::error(
                    subj(),
                    format!("component `{}` both provides and calls service `{s}`", c.name),
                ));
            }
        }
        for s in &c.calls {
            callers.entry(s).or_default().push(&c.name);
        }
    }

    for c in components {
        for t in &c.subscribes {
            if topic_names.contains(t.as_str()) && !publishers.contains_key(t.as_str()) {
                out.insert(Diagnostic::warning(
                    Some(Subject::Topic(t.clone())),
                    format!(
                        "topic `{t}` subscribed by `{}` has no publisher",
                        c.name
                    ),
                ));
            }
        }
    }

    for s in services {
        let subj = Some(Subject::Service(s.name.clone()));
        match providers.get(s.name.as_str()) {
            None => {
                let who = callers
                    .get(s.name.as_str())
                    .map(|c| {
                        let mut c = c.clone();
                        c.sort();
                        format!(" (called by {})", c.join(", "))
                    })
                    .unwrap_or_default();
                out.insert(Diagnostic::error(
                    subj,
                    format!("service `{}` has no provider{who}", s.name),
                ));
            }
            Some(p) if p.len() > 1 => {
                let mut p = p.clone();
                p.sort();
                out.insert(Diagnostic::error(
                    subj,
                    format!(
                        "service `{}` has {} providers: {}",
                        s.name,
                        p.len(),
                        p.join(", ")
                    ),
                ));
            }
            Some(_) => {}
        }
    }

    out.into_iter().collect()
}
