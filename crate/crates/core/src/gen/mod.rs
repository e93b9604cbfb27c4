//! Seeded procedural generation of support-desk worlds.

mod export;
mod generate;
mod profile;

pub use export::{
    entity_file, export_world, import_entities, import_world, read_entities, read_manifest,
    ExportError, WorldManifest, ENTITIES_DIR, WORLD_MANIFEST,
};
pub use generate::{
    category_label, generate_world, local_id, CATEGORIES, DEFAULT_RETURN_WINDOW_DAYS,
};
pub use profile::{GenProfile, NoiseConfig, ProfileError};
