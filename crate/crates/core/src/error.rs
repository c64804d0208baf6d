use alloc::string::String;

use thiserror::Error;

use crate::tree::{ClassId, MAX_DEPTH};
use crate::units::Rate;

/// A hierarchy that cannot be turned into a scheduler.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BuildError {
    #[error("hierarchy has no classes")]
    Empty,
    #[error("no root class (every class names a parent)")]
    NoRoot,
    #[error("more than one root class: {0:?} and {1:?}")]
    DuplicateRoot(String, String),
    #[error("duplicate class name {0:?}")]
    DuplicateName(String),
    #[error("class {class:?} names unknown parent {parent:?}")]
    Orphan { class: String, parent: String },
    #[error("class {0:?} is on a parent cycle")]
    Cycle(String),
    #[error("children of {parent:?} have assured rates summing to {sum}, exceeding its assured rate {assured}")]
    ChildrenAssuredExceedsParent {
        parent: String,
        sum: Rate,
        assured: Rate,
    },
    #[error("class {class:?}: ceiling {ceil} below assured rate {assured}")]
    CeilingBelowAssured {
        class: String,
        assured: Rate,
        ceil: Rate,
    },
    #[error("class {class:?}: priority {priority} outside 0..=7")]
    PriorityOutOfRange { class: String, priority: u8 },
    #[error("class {0:?}: quantum must be positive")]
    ZeroQuantum(String),
    #[error("class {class:?}: {bucket} of {bytes} B is smaller than one packet ({mtu} B)")]
    BucketTooSmall {
        class: String,
        bucket: &'static str,
        bytes: u32,
        mtu: u32,
    },
    #[error("leaf {0:?} has no queue index")]
    MissingQueueIndex(String),
    #[error("class {0:?} is declared at level 0 but has children")]
    LeafWithChildren(String),
    #[error("class {class:?} declares level {level}, not below the root's level {root_level}")]
    LevelAboveRoot {
        class: String,
        level: u32,
        root_level: u32,
    },
    #[error("{field} is a leaf-only field but {class:?} is not a leaf")]
    LeafFieldOnInner { class: String, field: &'static str },
    #[error("hierarchy is deeper than {MAX_DEPTH} levels")]
    TooDeep,
}

/// Misuse of the scheduler's call protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SchedError {
    #[error("unknown class {0}")]
    UnknownClass(ClassId),
    #[error("class {0} is not a leaf")]
    NotALeaf(ClassId),
    #[error("no leaf has queued packets")]
    NothingQueued,
    #[error("charge for {got} does not match the last selection ({expected:?})")]
    NotSelected {
        expected: Option<ClassId>,
        got: ClassId,
    },
}
