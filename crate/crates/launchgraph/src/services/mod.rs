//! Service factories, the built-in node kinds, and turning node specs into
//! runnable executables.

mod cacher;
mod executable;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use launchgraph_core::topology::{NodeDef, CACHER_FACTORY, COLOCATION_FACTORY};
use launchgraph_core::{ColocationMode, Handle, NodeSpec, TopologyError};

pub use crate::wire::Dispatch;
pub use cacher::CacherService;
pub use executable::{dereference, to_executables, Executable, Placement, RunEnv};

use crate::service::{BuildContext, MethodError, Service};
use crate::Error;

type Constructor = dyn Fn(&BuildContext<'_>) -> Result<Arc<dyn Service>, MethodError> + Send + Sync;

/// How to build one kind of service: its constructor, the methods it
/// exposes and whether it has a run procedure.
#[derive(Clone)]
pub struct Factory {
    name: String,
    methods: Vec<String>,
    has_run: bool,
    dispatch: Dispatch,
    constructor: Arc<Constructor>,
}

impl Factory {
    pub fn new<S, F>(name: impl Into<String>, constructor: F) -> Self
    where
        S: Service,
        F: Fn(&BuildContext<'_>) -> Result<S, MethodError> + Send + Sync + 'static,
    {
        Factory {
            name: name.into(),
            methods: Vec::new(),
            has_run: false,
            dispatch: Dispatch::Serialized,
            constructor: Arc::new(move |ctx| Ok(Arc::new(constructor(ctx)?) as Arc<dyn Service>)),
        }
    }

    pub fn methods<I, M>(mut self, methods: I) -> Self
    where
        I: IntoIterator<Item = M>,
        M: Into<String>,
    {
        self.methods.extend(methods.into_iter().map(Into::into));
        self
    }

    /// Marks the service as having a run procedure.
    pub fn with_run(mut self) -> Self {
        self.has_run = true;
        self
    }

    pub fn dispatch(mut self, dispatch: Dispatch) -> Self {
        self.dispatch = dispatch;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn method_names(&self) -> impl Iterator<Item = &str> {
        self.methods.iter().map(String::as_str)
    }

    pub fn has_run(&self) -> bool {
        self.has_run
    }

    pub fn dispatch_policy(&self) -> Dispatch {
        self.dispatch
    }

    pub(crate) fn construct(&self, ctx: &BuildContext<'_>) -> Result<Arc<dyn Service>, MethodError> {
        (self.constructor)(ctx)
    }
}

impl fmt::Debug for Factory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Factory")
            .field("name", &self.name)
            .field("methods", &self.methods)
            .field("has_run", &self.has_run)
            .field("dispatch", &self.dispatch)
            .finish()
    }
}

/// Factory name → factory. Frozen once handed to a launcher.
#[derive(Debug, Clone, Default)]
pub struct ServiceRegistry {
    factories: BTreeMap<String, Arc<Factory>>,
}

impl ServiceRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, factory: Factory) -> Result<(), Error> {
        let name = factory.name.clone();
        if name.is_empty() {
            return Err(Error::InvalidArgument("factory name must be nonempty".into()));
        }
        if name == CACHER_FACTORY || name == COLOCATION_FACTORY {
            return Err(Error::InvalidArgument(format!("{name:?} is a built-in node kind")));
        }
        if self.factories.contains_key(&name) {
            return Err(Error::AlreadyRegistered(name));
        }
        let mut seen = BTreeSet::new();
        for m in &factory.methods {
            if m == "run" {
                return Err(Error::InvalidArgument(format!(
                    "{name}: \"run\" is the run procedure, not a method"
                )));
            }
            if m.is_empty() {
                return Err(Error::InvalidArgument(format!("{name}: empty method name")));
            }
            if !seen.insert(m.as_str()) {
                return Err(Error::InvalidArgument(format!("{name}: method {m:?} listed twice")));
            }
        }
        self.factories.insert(name, Arc::new(factory));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Arc<Factory>> {
        self.factories.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }
}

/// A cacher node in front of `target`; see [`NodeDef::cacher`].
pub fn cacher_node(target: &Handle, ttl_seconds: f64) -> Result<NodeDef, TopologyError> {
    NodeDef::cacher(target, ttl_seconds)
}

/// A colocation node over already-added nodes; see [`NodeDef::colocation`].
pub fn colocation_node<'a>(
    children: impl IntoIterator<Item = &'a NodeSpec>,
    mode: ColocationMode,
) -> Result<NodeDef, TopologyError> {
    NodeDef::colocation(children, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use launchgraph_core::ArgValue;

    struct Nop;
    impl Service for Nop {
        fn call(&self, _: &str, _: &[ArgValue]) -> crate::service::MethodResult {
            Ok(ArgValue::Null)
        }
    }

    #[test]
    fn duplicate_and_run_rejected() {
        let mut r = ServiceRegistry::new();
        r.register(Factory::new("X", |_| Ok(Nop)).methods(["a"])).unwrap();
        assert!(matches!(
            r.register(Factory::new("X", |_| Ok(Nop))),
            Err(Error::AlreadyRegistered(_))
        ));
        assert!(matches!(
            r.register(Factory::new("Y", |_| Ok(Nop)).methods(["a", "run"])),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            r.register(Factory::new("Z", |_| Ok(Nop)).methods(["a", "a"])),
            Err(Error::InvalidArgument(_))
        ));
        assert!(!r.contains("Y"));
    }

    #[test]
    fn run_only_factory_is_valid() {
        let mut r = ServiceRegistry::new();
        r.register(Factory::new("Consumer", |_| Ok(Nop)).with_run()).unwrap();
        let f = r.get("Consumer").unwrap();
        assert!(f.has_run());
        assert_eq!(f.method_names().count(), 0);
    }

    #[test]
    fn builtin_names_reserved() {
        let mut r = ServiceRegistry::new();
        assert!(r.register(Factory::new(CACHER_FACTORY, |_| Ok(Nop))).is_err());
    }
}
