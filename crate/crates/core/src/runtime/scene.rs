use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use thiserror::Error;

use super::value::{BBox, Patch};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: String,
    pub name: String,
    #[serde(rename = "box")]
    pub bbox: BBox,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub subject_id: String,
    pub predicate: String,
    pub object_id: String,
}

/// Scene graph standing in for an image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scene {
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub objects: Vec<SceneObject>,
    #[serde(default)]
    pub relations: Vec<Relation>,
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("cannot read scene {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("scene is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    /// `pointer` is a JSON pointer into the scene document.
    #[error("schema violation at {pointer}: {message}")]
    Schema { pointer: String, message: String },
}

fn schema(pointer: impl Into<String>, message: impl Into<String>) -> SceneError {
    SceneError::Schema {
        pointer: pointer.into(),
        message: message.into(),
    }
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<Scene, SceneError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SceneError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let json: Json = serde_json::from_str(&text)?;
    Scene::from_json(&json)
}

fn get_u32(obj: &serde_json::Map<String, Json>, key: &str, ptr: &str) -> Result<u32, SceneError> {
    let v = obj
        .get(key)
        .ok_or_else(|| schema(format!("{ptr}/{key}"), "missing required field"))?;
    v.as_u64()
        .and_then(|n| u32::try_from(n).ok())
        .ok_or_else(|| schema(format!("{ptr}/{key}"), "expected a non-negative integer"))
}

fn get_str<'a>(
    obj: &'a serde_json::Map<String, Json>,
    key: &str,
    ptr: &str,
) -> Result<&'a str, SceneError> {
    obj.get(key)
        .ok_or_else(|| schema(format!("{ptr}/{key}"), "missing required field"))?
        .as_str()
        .ok_or_else(|| schema(format!("{ptr}/{key}"), "expected a string"))
}

fn as_object<'a>(v: &'a Json, ptr: &str) -> Result<&'a serde_json::Map<String, Json>, SceneError> {
    v.as_object()
        .ok_or_else(|| schema(ptr, "expected an object"))
}

fn reject_unknown(
    obj: &serde_json::Map<String, Json>,
    allowed: &[&str],
    ptr: &str,
) -> Result<(), SceneError> {
    match obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(schema(format!("{ptr}/{k}"), "unknown field")),
        None => Ok(()),
    }
}

impl Scene {
    /// Parse and validate a scene document. Errors carry a JSON pointer.
    pub fn from_json(json: &Json) -> Result<Scene, SceneError> {
        let root = as_object(json, "")?;
        reject_unknown(root, &["width", "height", "objects", "relations"], "")?;
        let width = get_u32(root, "width", "")?;
        let height = get_u32(root, "height", "")?;

        let mut objects = Vec::new();
        if let Some(list) = root.get("objects") {
            let list = list
                .as_array()
                .ok_or_else(|| schema("/objects", "expected an array"))?;
            for (i, item) in list.iter().enumerate() {
                let ptr = format!("/objects/{i}");
                let obj = as_object(item, &ptr)?;
                reject_unknown(obj, &["id", "name", "box", "attributes"], &ptr)?;
                let id = get_str(obj, "id", &ptr)?.to_string();
                let name = get_str(obj, "name", &ptr)?.to_string();
                if name != name.to_lowercase() || name.trim().is_empty() {
                    return Err(schema(
                        format!("{ptr}/name"),
                        "name must be non-empty lowercase",
                    ));
                }
                let bbox = obj
                    .get("box")
                    .ok_or_else(|| schema(format!("{ptr}/box"), "missing required field"))?;
                let bbox: [u32; 4] = serde_json::from_value(bbox.clone()).map_err(|_| {
                    schema(
                        format!("{ptr}/box"),
                        "expected [x, y, w, h] of non-negative integers",
                    )
                })?;
                let mut attributes = BTreeMap::new();
                if let Some(attrs) = obj.get("attributes") {
                    let attrs = as_object(attrs, &format!("{ptr}/attributes"))?;
                    for (k, v) in attrs {
                        let v = v.as_str().ok_or_else(|| {
                            schema(format!("{ptr}/attributes/{k}"), "expected a string")
                        })?;
                        attributes.insert(k.clone(), v.to_string());
                    }
                }
                objects.push(SceneObject {
                    id,
                    name,
                    bbox: BBox::from(bbox),
                    attributes,
                });
            }
        }

        let mut relations = Vec::new();
        if let Some(list) = root.get("relations") {
            let list = list
                .as_array()
                .ok_or_else(|| schema("/relations", "expected an array"))?;
            for (i, item) in list.iter().enumerate() {
                let ptr = format!("/relations/{i}");
                let obj = as_object(item, &ptr)?;
                reject_unknown(obj, &["subject_id", "predicate", "object_id"], &ptr)?;
                relations.push(Relation {
                    subject_id: get_str(obj, "subject_id", &ptr)?.to_string(),
                    predicate: get_str(obj, "predicate", &ptr)?.to_string(),
                    object_id: get_str(obj, "object_id", &ptr)?.to_string(),
                });
            }
        }

        let scene = Scene {
            width,
            height,
            objects,
            relations,
        };
        scene.validate()?;
        Ok(scene)
    }

    /// Check ids are unique, boxes lie on the canvas and relations resolve.
    pub fn validate(&self) -> Result<(), SceneError> {
        let canvas = self.canvas();
        let mut ids = HashSet::new();
        for (i, o) in self.objects.iter().enumerate() {
            if !ids.insert(o.id.as_str()) {
                return Err(schema(
                    format!("/objects/{i}/id"),
                    format!("duplicate object id '{}'", o.id),
                ));
            }
            if !canvas.contains(&o.bbox) {
                return Err(schema(
                    format!("/objects/{i}/box"),
                    format!(
                        "box {} exceeds the {}x{} canvas",
                        o.bbox, self.width, self.height
                    ),
                ));
            }
        }
        for (i, r) in self.relations.iter().enumerate() {
            for (field, id) in [("subject_id", &r.subject_id), ("object_id", &r.object_id)] {
                if !ids.contains(id.as_str()) {
                    return Err(schema(
                        format!("/relations/{i}/{field}"),
                        format!("relation {i} references unknown object '{id}'"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn canvas(&self) -> BBox {
        BBox::new(0, 0, self.width, self.height)
    }

    /// The patch bound to `image` at program start.
    pub fn full_patch(&self) -> Patch {
        Patch {
            bbox: self.canvas(),
            object_ids: self.objects.iter().map(|o| o.id.clone()).collect(),
            label: None,
        }
    }

    pub fn object(&self, id: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }
}
