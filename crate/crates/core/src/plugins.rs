//! Before/after/instead handlers for named functions.
//!
//! A function is made extensible by exposing it under a dot-separated
//! [`QualifiedName`]. The returned [`Hooked`] callable behaves exactly like the
//! original until handlers are attached; afterwards every call runs the
//! pipeline:
//!
//! 1. `Before` handlers in attachment order. [`HandlerOutcome::ChangedArgs`]
//!    replaces the arguments for every later stage,
//!    [`HandlerOutcome::ChangedResult`] skips straight to the `After` stage.
//! 2. The most recently attached `Instead` handler, or the original function
//!    when there is none.
//! 3. `After` handlers in attachment order, each seeing the arguments and the
//!    current result. `ChangedResult` replaces the result.
//!
//! Hooked functions take a mutable context (the receiver, `()` for free
//! functions) plus an owned argument value.
//!
//! Registration and handler changes are meant to happen during setup. Calls
//! snapshot the handler chains, so a handler attached while a call is running
//! only takes effect on the next call.

use std::any::Any;
use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, OnceLock, RwLock};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PluginError {
    #[error("invalid qualified name {0:?}")]
    InvalidName(String),
    #[error("{0} is already exposed to plugins")]
    Duplicate(QualifiedName),
    #[error("{0} is not exposed to plugins")]
    Unknown(String),
    #[error("handler signature does not match the function exposed as {0}")]
    SignatureMismatch(QualifiedName),
}

/// Dot-separated function path such as `model.Greenhouse.update_air_exchange`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QualifiedName(String);

impl QualifiedName {
    pub fn new(name: impl Into<String>) -> Result<Self, PluginError> {
        let name = name.into();
        if name.is_empty() || name.split('.').any(str::is_empty) {
            return Err(PluginError::InvalidName(name));
        }
        Ok(Self(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for QualifiedName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for QualifiedName {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl TryFrom<&str> for QualifiedName {
    type Error = PluginError;

    fn try_from(s: &str) -> Result<Self, Self::Error> {
        Self::new(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HandlerPosition {
    Before,
    After,
    Instead,
}

impl std::str::FromStr for HandlerPosition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "before" => Ok(Self::Before),
            "after" => Ok(Self::After),
            "instead" => Ok(Self::Instead),
            other => Err(format!("unknown handler position {other:?}")),
        }
    }
}

/// What a `Before` or `After` handler asks the pipeline to do.
///
/// `ChangedArgs` returned from an `After` handler is ignored: the function
/// has already run.
#[derive(Debug, Clone, PartialEq)]
pub enum HandlerOutcome<A, R> {
    Unchanged,
    ChangedArgs(A),
    ChangedResult(R),
}

type OriginalFn<C, A, R> = dyn Fn(&mut C, A) -> R + Send + Sync;
type BeforeFn<C, A, R> = dyn Fn(&mut C, &A) -> HandlerOutcome<A, R> + Send + Sync;
type InsteadFn<C, A, R> = dyn Fn(&mut C, A) -> R + Send + Sync;
type AfterFn<C, A, R> = dyn Fn(&mut C, &A, &R) -> HandlerOutcome<A, R> + Send + Sync;

/// A handler together with the position it attaches at.
pub enum Handler<C, A, R> {
    Before(Arc<BeforeFn<C, A, R>>),
    Instead(Arc<InsteadFn<C, A, R>>),
    After(Arc<AfterFn<C, A, R>>),
}

impl<C, A, R> Handler<C, A, R> {
    pub fn before(f: impl Fn(&mut C, &A) -> HandlerOutcome<A, R> + Send + Sync + 'static) -> Self {
        Handler::Before(Arc::new(f))
    }

    pub fn instead(f: impl Fn(&mut C, A) -> R + Send + Sync + 'static) -> Self {
        Handler::Instead(Arc::new(f))
    }

    pub fn after(
        f: impl Fn(&mut C, &A, &R) -> HandlerOutcome<A, R> + Send + Sync + 'static,
    ) -> Self {
        Handler::After(Arc::new(f))
    }

    pub fn position(&self) -> HandlerPosition {
        match self {
            Handler::Before(_) => HandlerPosition::Before,
            Handler::Instead(_) => HandlerPosition::Instead,
            Handler::After(_) => HandlerPosition::After,
        }
    }
}

impl<C, A, R> Clone for Handler<C, A, R> {
    fn clone(&self) -> Self {
        match self {
            Handler::Before(f) => Handler::Before(Arc::clone(f)),
            Handler::Instead(f) => Handler::Instead(Arc::clone(f)),
            Handler::After(f) => Handler::After(Arc::clone(f)),
        }
    }
}

struct Chains<C, A, R> {
    before: Vec<Arc<BeforeFn<C, A, R>>>,
    instead: Vec<Arc<InsteadFn<C, A, R>>>,
    after: Vec<Arc<AfterFn<C, A, R>>>,
}

impl<C, A, R> Clone for Chains<C, A, R> {
    fn clone(&self) -> Self {
        Self {
            before: self.before.clone(),
            instead: self.instead.clone(),
            after: self.after.clone(),
        }
    }
}

struct HookTable<C, A, R> {
    original: Box<OriginalFn<C, A, R>>,
    chains: RwLock<Chains<C, A, R>>,
}

/// Untyped view used by operations that do not need the signature.
trait Clearable: Send + Sync {
    fn clear(&self, position: HandlerPosition);
    fn as_any(self: Arc<Self>) -> Arc<dyn Any + Send + Sync>;
}

impl<C: 'static, A: 'static, R: 'static> Clearable for HookTable<C, A, R> {
    fn clear(&self, position: HandlerPosition) {
        let mut chains = self.chains.write().unwrap_or_else(|e| e.into_inner());
        match position {
            HandlerPosition::Before => chains.before.clear(),
            HandlerPosition::Instead => chains.instead.clear(),
            HandlerPosition::After => chains.after.clear(),
        }
    }

    fn as_any(self: Arc<Self>) -> Arc<dyn Any + Send + Sync> {
        self
    }
}

impl<C, A: Clone, R> HookTable<C, A, R> {
    fn invoke(&self, ctx: &mut C, mut args: A) -> R {
        let chains = self
            .chains
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .clone();

        let mut result = None;
        for handler in &chains.before {
            match handler(ctx, &args) {
                HandlerOutcome::Unchanged => {}
                HandlerOutcome::ChangedArgs(changed) => args = changed,
                HandlerOutcome::ChangedResult(r) => {
                    result = Some(r);
                    break;
                }
            }
        }

        let mut result = match result {
            Some(r) => r,
            None => {
                let call_args = if chains.after.is_empty() {
                    // Nothing reads the arguments afterwards; skip the clone.
                    return match chains.instead.last() {
                        Some(instead) => instead(ctx, args),
                        None => (self.original)(ctx, args),
                    };
                } else {
                    args.clone()
                };
                match chains.instead.last() {
                    Some(instead) => instead(ctx, call_args),
                    None => (self.original)(ctx, call_args),
                }
            }
        };

        for handler in &chains.after {
            if let HandlerOutcome::ChangedResult(r) = handler(ctx, &args, &result) {
                result = r;
            }
        }
        result
    }
}

/// An exposed function. Calling it runs the handler pipeline.
pub struct Hooked<C, A, R> {
    name: QualifiedName,
    table: Arc<HookTable<C, A, R>>,
}

impl<C, A, R> Clone for Hooked<C, A, R> {
    fn clone(&self) -> Self {
        Self {
            name: self.name.clone(),
            table: Arc::clone(&self.table),
        }
    }
}

impl<C, A, R> fmt::Debug for Hooked<C, A, R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Hooked").field("name", &self.name).finish()
    }
}

impl<C, A: Clone, R> Hooked<C, A, R> {
    pub fn name(&self) -> &QualifiedName {
        &self.name
    }

    pub fn call_with(&self, ctx: &mut C, args: A) -> R {
        self.table.invoke(ctx, args)
    }
}

impl<A: Clone, R> Hooked<(), A, R> {
    /// Calls a hooked free function.
    pub fn call(&self, args: A) -> R {
        self.table.invoke(&mut (), args)
    }
}

impl<C, A, R> AsRef<str> for Hooked<C, A, R> {
    fn as_ref(&self) -> &str {
        self.name.as_str()
    }
}

/// Maps qualified names to exposed functions and their handler chains.
#[derive(Default)]
pub struct HookRegistry {
    entries: RwLock<HashMap<QualifiedName, Arc<dyn Clearable>>>,
}

impl fmt::Debug for HookRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let entries = self.entries.read().unwrap_or_else(|e| e.into_inner());
        let mut names: Vec<_> = entries.keys().collect();
        names.sort();
        f.debug_struct("HookRegistry")
            .field("names", &names)
            .finish()
    }
}

impl HookRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// The process-wide registry used by the free functions in this module.
    pub fn global() -> &'static HookRegistry {
        static GLOBAL: OnceLock<HookRegistry> = OnceLock::new();
        GLOBAL.get_or_init(HookRegistry::new)
    }

    pub fn expose<C, A, R, F>(&self, name: &str, f: F) -> Result<Hooked<C, A, R>, PluginError>
    where
        C: 'static,
        A: Clone + 'static,
        R: 'static,
        F: Fn(&mut C, A) -> R + Send + Sync + 'static,
    {
        let name = QualifiedName::new(name)?;
        let mut entries = self.entries.write().unwrap_or_else(|e| e.into_inner());
        if entries.contains_key(&name) {
            return Err(PluginError::Duplicate(name));
        }
        let table = Arc::new(HookTable {
            original: Box::new(f),
            chains: RwLock::new(Chains {
                before: Vec::new(),
                instead: Vec::new(),
                after: Vec::new(),
            }),
        });
        entries.insert(name.clone(), table.clone());
        Ok(Hooked { name, table })
    }

    pub fn is_exposed(&self, name: &str) -> bool {
        self.entries
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .keys()
            .any(|k| k.as_str() == name)
    }

    fn entry(&self, target: &str) -> Result<(QualifiedName, Arc<dyn Clearable>), PluginError> {
        let entries = self.entries.read().unwrap_or_else(|e| e.into_inner());
        entries
            .iter()
            .find(|(k, _)| k.as_str() == target)
            .map(|(k, v)| (k.clone(), Arc::clone(v)))
            .ok_or_else(|| PluginError::Unknown(target.to_owned()))
    }

    fn table<C, A, R>(&self, target: &str) -> Result<Hooked<C, A, R>, PluginError>
    where
        C: 'static,
        A: 'static,
        R: 'static,
    {
        let (name, entry) = self.entry(target)?;
        let table = entry
            .as_any()
            .downcast::<HookTable<C, A, R>>()
            .map_err(|_| PluginError::SignatureMismatch(name.clone()))?;
        Ok(Hooked { name, table })
    }

    /// Looks up a previously exposed function by name.
    pub fn lookup<C, A, R>(&self, target: impl AsRef<str>) -> Result<Hooked<C, A, R>, PluginError>
    where
        C: 'static,
        A: 'static,
        R: 'static,
    {
        self.table(target.as_ref())
    }

    /// Appends `handler` to the chain of its position on `target`.
    ///
    /// `target` is either the qualified name or the [`Hooked`] callable.
    pub fn attach<C, A, R>(
        &self,
        handler: Handler<C, A, R>,
        target: impl AsRef<str>,
    ) -> Result<(), PluginError>
    where
        C: 'static,
        A: 'static,
        R: 'static,
    {
        let hooked = self.table::<C, A, R>(target.as_ref())?;
        let mut chains = hooked
            .table
            .chains
            .write()
            .unwrap_or_else(|e| e.into_inner());
        match handler {
            Handler::Before(f) => chains.before.push(f),
            Handler::Instead(f) => chains.instead.push(f),
            Handler::After(f) => chains.after.push(f),
        }
        Ok(())
    }

    /// Drops every handler at `position` on `target`. A no-op when none are attached.
    pub fn remove(
        &self,
        target: impl AsRef<str>,
        position: HandlerPosition,
    ) -> Result<(), PluginError> {
        let (_, entry) = self.entry(target.as_ref())?;
        entry.clear(position);
        Ok(())
    }

    /// Calls the function exposed as `target` through its pipeline.
    pub fn invoke<C, A, R>(
        &self,
        target: impl AsRef<str>,
        ctx: &mut C,
        args: A,
    ) -> Result<R, PluginError>
    where
        C: 'static,
        A: Clone + 'static,
        R: 'static,
    {
        Ok(self.table::<C, A, R>(target.as_ref())?.call_with(ctx, args))
    }
}

/// Exposes a free function on the global registry.
pub fn expose_to_plugins<A, R, F>(name: &str, f: F) -> Result<Hooked<(), A, R>, PluginError>
where
    A: Clone + 'static,
    R: 'static,
    F: Fn(A) -> R + Send + Sync + 'static,
{
    HookRegistry::global().expose(name, move |_: &mut (), args| f(args))
}

pub fn attach_handler<C, A, R>(
    handler: Handler<C, A, R>,
    target: impl AsRef<str>,
) -> Result<(), PluginError>
where
    C: 'static,
    A: 'static,
    R: 'static,
{
    HookRegistry::global().attach(handler, target)
}

pub fn remove_handler(
    target: impl AsRef<str>,
    position: HandlerPosition,
) -> Result<(), PluginError> {
    HookRegistry::global().remove(target, position)
}
