use std::path::PathBuf;

/// Errors produced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("failed to decode image {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("schema `{schema}`: duplicate class name `{name}`")]
    DuplicateClassName { schema: String, name: String },

    #[error("schema `{schema}`: classes `{first}` and `{second}` share color {color:?}")]
    DuplicateClassColor {
        schema: String,
        first: String,
        second: String,
        color: [u8; 3],
    },

    #[error("schema `{schema}`: ignore color {color:?} collides with class `{class}`")]
    IgnoreColorCollision {
        schema: String,
        class: String,
        color: [u8; 3],
    },

    #[error("schema `{schema}` has {count} classes; at most {max} are supported")]
    SchemaTooLarge {
        schema: String,
        count: usize,
        max: usize,
    },

    #[error("pooling map: source class `{name}` is not in schema `{schema}`")]
    UnknownPoolingSource { schema: String, name: String },

    #[error("pooling map: target class `{name}` is not in schema `{schema}`")]
    UnknownPoolingTarget { schema: String, name: String },

    #[error("pooling map from `{schema}` is missing entries for {missing:?}")]
    IncompletePooling { schema: String, missing: Vec<String> },

    #[error("config file {path} has no [pooling] table")]
    MissingPoolingTable { path: PathBuf },

    #[error("class id {id} is not valid in schema `{schema}`")]
    UnknownClassId { id: u8, schema: String },

    #[error("class `{name}` is not in schema `{schema}`")]
    UnknownClassName { name: String, schema: String },

    #[error("mask is bound to schema `{found}`, expected `{expected}`")]
    SchemaMismatch { expected: String, found: String },

    #[error("dimension mismatch: {left_w}x{left_h} vs {right_w}x{right_h}")]
    DimensionMismatch {
        left_w: u32,
        left_h: u32,
        right_w: u32,
        right_h: u32,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("region of interest is empty")]
    EmptyRoi,

    #[error("k-means: {0}")]
    KMeans(String),

    #[error("classifier: {0}")]
    Classifier(String),

    #[error("composite: overlay pixel {index} lies outside the traversable region")]
    OverlayOutsideRoi { index: usize },

    #[error("composite: pixel {index} is claimed by more than one pool")]
    OverlappingOverlays { index: usize },

    #[error("manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },

    #[error("manifest references missing files: {0:?}")]
    MissingFiles(Vec<PathBuf>),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
