use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::model::{ComponentSpec, Message, MessageType, ModelError, ServiceSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuntimeError {
    #[error("component `{component}` does not declare topic `{topic}`")]
    UndeclaredTopic { component: String, topic: String },
    #[error("component `{component}` does not declare service `{service}`")]
    UndeclaredService { component: String, service: String },
    #[error("component `{component}`: {source}")]
    TypeMismatch {
        component: String,
        #[source]
        source: ModelError,
    },
    #[error("service `{0}` has no provider")]
    NoProvider(String),
    #[error("no behavior registered as `{0}`")]
    UnknownBehavior(String),
    #[error("behavior `{component}` failed: {message}")]
    Behavior { component: String, message: String },
}

/// Result of a service call as seen by the caller.
#[derive(Debug, Clone, PartialEq)]
pub enum ServiceOutcome {
    Response(Message),
    Timeout,
}

/// Effect requested by a callback; released when the job completes.
#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    Publish { topic: String, msg: Message },
    Call { service: String, request: Message },
}

/// Execution context handed to every callback.
///
/// Reads see the values visible to the component when the callback started;
/// publications and calls are collected and take effect at job completion.
pub struct Context<'a> {
    spec: &'a ComponentSpec,
    topic_types: &'a BTreeMap<String, MessageType>,
    services: &'a BTreeMap<String, ServiceSpec>,
    now_us: u64,
    inputs: BTreeMap<String, Message>,
    outbox: Vec<Output>,
}

impl<'a> Context<'a> {
    pub fn new(
        spec: &'a ComponentSpec,
        topic_types: &'a BTreeMap<String, MessageType>,
        services: &'a BTreeMap<String, ServiceSpec>,
        now_us: u64,
        inputs: BTreeMap<String, Message>,
    ) -> Context<'a> {
        Context {
            spec,
            topic_types,
            services,
            now_us,
            inputs,
            outbox: Vec::new(),
        }
    }

    pub fn component(&self) -> &str {
        &self.spec.name
    }

    pub fn spec(&self) -> &ComponentSpec {
        self.spec
    }

    /// Virtual time in microseconds.
    pub fn now_us(&self) -> u64 {
        self.now_us
    }

    pub fn topic_type(&self, topic: &str) -> Option<&MessageType> {
        self.topic_types.get(topic)
    }

    pub fn service_spec(&self, service: &str) -> Option<&ServiceSpec> {
        self.services.get(service)
    }

    /// Most recent value of a subscribed topic, `None` before the first write.
    pub fn latest(&self, topic: &str) -> Result<Option<&Message>, RuntimeError> {
        if !self.spec.subscribes.iter().any(|t| t == topic) {
            return Err(RuntimeError::UndeclaredTopic {
                component: self.spec.name.clone(),
                topic: topic.to_string(),
            });
        }
        Ok(self.inputs.get(topic))
    }

    pub fn publish(&mut self, topic: &str, msg: Message) -> Result<(), RuntimeError> {
        if !self.spec.publishes.iter().any(|t| t == topic) {
            return Err(RuntimeError::UndeclaredTopic {
                component: self.spec.name.clone(),
                topic: topic.to_string(),
            });
        }
        let ty = &self.topic_types[topic];
        msg.check(ty).map_err(|source| RuntimeError::TypeMismatch {
            component: self.spec.name.clone(),
            source,
        })?;
        self.outbox.push(Output::Publish {
            topic: topic.to_string(),
            msg,
        });
        Ok(())
    }

    /// Sends a request; the outcome arrives through [`Behavior::on_response`].
    pub fn call_service(&mut self, service: &str, request: Message) -> Result<(), RuntimeError> {
        if !self.spec.calls.iter().any(|s| s == service) {
            return Err(RuntimeError::UndeclaredService {
                component: self.spec.name.clone(),
                service: service.to_string(),
            });
        }
        let spec = &self.services[service];
        request
            .check(&spec.request)
            .map_err(|source| RuntimeError::TypeMismatch {
                component: self.spec.name.clone(),
                source,
            })?;
        self.outbox.push(Output::Call {
            service: service.to_string(),
            request,
        });
        Ok(())
    }

    /// Effects requested so far in this callback.
    pub fn outputs(&self) -> &[Output] {
        &self.outbox
    }

    pub fn into_outputs(self) -> Vec<Output> {
        self.outbox
    }

    /// Behavior-level error carrying the component name.
    pub fn fail(&self, message: impl Into<String>) -> RuntimeError {
        RuntimeError::Behavior {
            component: self.spec.name.clone(),
            message: message.into(),
        }
    }
}

/// A component implementation, portable between host and fabric executors.
pub trait Behavior {
    fn on_init(&mut self, _ctx: &mut Context<'_>) -> Result<(), RuntimeError> {
        Ok(())
    }

    /// One activation of `thread`.
    fn on_thread(&mut self, ctx: &mut Context<'_>, thread: &str) -> Result<(), RuntimeError>;

    /// Queued delivery on the host, in publish order, before `on_thread`.
    fn on_message(
        &mut self,
        _ctx: &mut Context<'_>,
        _topic: &str,
        _msg: &Message,
    ) -> Result<(), RuntimeError> {
        Ok(())
    }

    fn on_service(
        &mut self,
        ctx: &mut Context<'_>,
        service: &str,
        _request: &Message,
    ) -> Result<Message, RuntimeError> {
        Err(ctx.fail(format!("no handler for service `{service}`")))
    }

    fn on_response(
        &mut self,
        _ctx: &mut Context<'_>,
        _service: &str,
        _outcome: &ServiceOutcome,
    ) -> Result<(), RuntimeError> {
        Ok(())
    }
}

type Factory = Box<dyn Fn(&ComponentSpec) -> Box<dyn Behavior>>;

/// Behaviors by identifier; manifests reference them through `behavior = ...`.
#[derive(Default)]
pub struct BehaviorRegistry {
    factories: BTreeMap<String, Factory>,
}

impl fmt::Debug for BehaviorRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.factories.keys()).finish()
    }
}

impl BehaviorRegistry {
    pub fn new() -> BehaviorRegistry {
        BehaviorRegistry::default()
    }

    pub fn register<F>(&mut self, id: impl Into<String>, factory: F)
    where
        F: Fn(&ComponentSpec) -> Box<dyn Behavior> + 'static,
    {
        self.factories.insert(id.into(), Box::new(factory));
    }

    pub fn contains(&self, id: &str) -> bool {
        self.factories.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn instantiate(&self, spec: &ComponentSpec) -> Result<Box<dyn Behavior>, RuntimeError> {
        self.factories
            .get(&spec.behavior)
            .map(|f| f(spec))
            .ok_or_else(|| RuntimeError::UnknownBehavior(spec.behavior.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FieldType, Primitive};

    fn setup() -> (ComponentSpec, BTreeMap<String, MessageType>, BTreeMap<String, ServiceSpec>) {
        let mut spec = ComponentSpec::new("c", "c");
        spec.publishes.push("out".into());
        spec.subscribes.push("in".into());
        let ty = MessageType::new("T", vec![("x".into(), FieldType::Scalar(Primitive::F32))]).unwrap();
        let types = [("out".to_string(), ty.clone()), ("in".to_string(), ty)].into();
        (spec, types, BTreeMap::new())
    }

    #[test]
    fn latest_before_publish_is_none() {
        let (spec, types, services) = setup();
        let ctx = Context::new(&spec, &types, &services, 0, BTreeMap::new());
        assert_eq!(ctx.latest("in"), Ok(None));
        assert!(matches!(ctx.latest("out"), Err(RuntimeError::UndeclaredTopic { .. })));
    }

    #[test]
    fn publish_checks_declaration_and_type() {
        let (spec, types, services) = setup();
        let mut ctx = Context::new(&spec, &types, &services, 0, BTreeMap::new());
        let msg = Message::zeroed(&types["out"]);
        assert!(ctx.publish("in", msg.clone()).is_err());
        let other = MessageType::new("U", vec![("y".into(), FieldType::Scalar(Primitive::U8))]).unwrap();
        assert!(matches!(
            ctx.publish("out", Message::zeroed(&other)),
            Err(RuntimeError::TypeMismatch { .. })
        ));
        ctx.publish("out", msg).unwrap();
        assert_eq!(ctx.into_outputs().len(), 1);
    }
}
