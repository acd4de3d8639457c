use super::scene::{Scene, SceneObject};
use super::value::Patch;

/// Perception operations a program can call. Implementations must be
/// deterministic for a fixed scene and configuration and safe to call from
/// several threads.
pub trait PerceptionBackend: Send + Sync {
    /// Objects called `name` inside `patch`, as single-object patches.
    fn find(&self, scene: &Scene, patch: &Patch, name: &str) -> Vec<Patch>;

    fn exists(&self, scene: &Scene, patch: &Patch, name: &str) -> bool {
        !self.find(scene, patch, name).is_empty()
    }

    fn query(&self, scene: &Scene, patch: &Patch, question: &str) -> String;

    fn verify_property(&self, scene: &Scene, patch: &Patch, name: &str, property: &str) -> bool;

    fn related(&self, scene: &Scene, subject: &Patch, predicate: &str, object: &Patch) -> bool;
}

/// Lowercase and trim.
pub fn normalize_name(name: &str) -> String {
    name.trim().to_lowercase()
}

fn singular(name: &str) -> &str {
    match name.strip_suffix('s') {
        Some(stem) if !stem.is_empty() => stem,
        _ => name,
    }
}

/// Case-folded exact match, falling back to comparing with one trailing
/// `s` stripped from each side.
pub fn names_match(query: &str, name: &str) -> bool {
    let q = normalize_name(query);
    let n = normalize_name(name);
    q == n || singular(&q) == singular(&n)
}

/// Oracle backend answering from the scene graph.
#[derive(Debug, Clone, Copy, Default)]
pub struct SyntheticBackend;

impl SyntheticBackend {
    fn matches<'s>(&self, scene: &'s Scene, patch: &Patch, name: &str) -> Vec<&'s SceneObject> {
        let mut hits: Vec<&SceneObject> = scene
            .objects
            .iter()
            .filter(|o| names_match(name, &o.name) && patch.bbox.contains(&o.bbox))
            .collect();
        hits.sort_by(|a, b| a.bbox.x.cmp(&b.bbox.x).then_with(|| a.id.cmp(&b.id)));
        hits
    }
}

fn object_patch(o: &SceneObject) -> Patch {
    Patch {
        bbox: o.bbox,
        object_ids: vec![o.id.clone()],
        label: Some(o.name.clone()),
    }
}

impl PerceptionBackend for SyntheticBackend {
    fn find(&self, scene: &Scene, patch: &Patch, name: &str) -> Vec<Patch> {
        self.matches(scene, patch, name)
            .into_iter()
            .map(object_patch)
            .collect()
    }

    fn query(&self, scene: &Scene, patch: &Patch, question: &str) -> String {
        let q = question
            .trim()
            .trim_end_matches(['?', '.', '!'])
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ")
            .to_lowercase();
        if let Some(rest) = q.strip_prefix("how many ") {
            let name = rest.strip_suffix(" are there").unwrap_or(rest);
            return self.matches(scene, patch, name).len().to_string();
        }
        let there = q
            .strip_prefix("is there an ")
            .or_else(|| q.strip_prefix("is there a "));
        if let Some(name) = there {
            let found = !self.matches(scene, patch, name).is_empty();
            return if found { "yes" } else { "no" }.to_string();
        }
        if let Some(name) = q.strip_prefix("what color is the ") {
            return self
                .matches(scene, patch, name)
                .first()
                .and_then(|o| o.attributes.get("color").cloned())
                .unwrap_or_else(|| "unknown".to_string());
        }
        "unknown".to_string()
    }

    fn verify_property(&self, scene: &Scene, patch: &Patch, name: &str, property: &str) -> bool {
        let prop = normalize_name(property);
        self.matches(scene, patch, name)
            .iter()
            .any(|o| o.attributes.values().any(|v| normalize_name(v) == prop))
    }

    fn related(&self, scene: &Scene, subject: &Patch, predicate: &str, object: &Patch) -> bool {
        let pred = normalize_name(predicate);
        scene.relations.iter().any(|r| {
            normalize_name(&r.predicate) == pred
                && subject.object_ids.contains(&r.subject_id)
                && object.object_ids.contains(&r.object_id)
        })
    }
}
