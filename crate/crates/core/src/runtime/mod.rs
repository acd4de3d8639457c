//! Program execution against scene graphs.
//!
//! [`execute`] walks a parsed program, binding `image` to the whole scene,
//! and records a [`TraceEvent`] for every assignment, primitive call, branch
//! decision, loop iteration and return. Perception goes through a
//! [`PerceptionBackend`]; [`SyntheticBackend`] answers from the scene graph
//! and is what all hermetic runs use.

mod backend;
mod interp;
mod scene;
mod value;

pub use backend::{names_match, normalize_name, PerceptionBackend, SyntheticBackend};
pub use interp::{
    execute, EventKind, ExecutionResult, Limits, RuntimeError, TraceEvent, DEFAULT_STEP_LIMIT,
};
pub use scene::{load_scene, Relation, Scene, SceneError, SceneObject};
pub use value::{BBox, Patch, Ty, Value};

/// Parameter and return types of a callable primitive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Signature {
    pub name: &'static str,
    pub params: &'static [Ty],
    pub ret: Ty,
}

const SIGNATURES: [Signature; 11] = [
    Signature {
        name: "find",
        params: &[Ty::Patch, Ty::Text],
        ret: Ty::List,
    },
    Signature {
        name: "exists",
        params: &[Ty::Patch, Ty::Text],
        ret: Ty::Bool,
    },
    Signature {
        name: "query",
        params: &[Ty::Patch, Ty::Text],
        ret: Ty::Text,
    },
    Signature {
        name: "verify_property",
        params: &[Ty::Patch, Ty::Text, Ty::Text],
        ret: Ty::Bool,
    },
    Signature {
        name: "related",
        params: &[Ty::Patch, Ty::Text, Ty::Patch],
        ret: Ty::Bool,
    },
    Signature {
        name: "count",
        params: &[Ty::List],
        ret: Ty::Number,
    },
    Signature {
        name: "get",
        params: &[Ty::List, Ty::Number],
        ret: Ty::Unknown,
    },
    Signature {
        name: "hcenter",
        params: &[Ty::Patch],
        ret: Ty::Number,
    },
    Signature {
        name: "vcenter",
        params: &[Ty::Patch],
        ret: Ty::Number,
    },
    Signature {
        name: "width",
        params: &[Ty::Patch],
        ret: Ty::Number,
    },
    Signature {
        name: "height",
        params: &[Ty::Patch],
        ret: Ty::Number,
    },
];

/// Signature of a primitive or builtin, `None` for unknown names.
pub fn signature(name: &str) -> Option<&'static Signature> {
    SIGNATURES.iter().find(|s| s.name == name)
}
