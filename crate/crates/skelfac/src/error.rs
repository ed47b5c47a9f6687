use thiserror::Error;

/// Errors surfaced by tree construction, factorization and updating.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unresolvable point cluster")]
    UnresolvableCluster,
    #[error("missing normals")]
    MissingNormals,
    #[error("negative scatterer field")]
    NegativeScatterer,
    #[error("grid size is not a perfect square")]
    NonSquareGrid,
    #[error("size mismatch between problems")]
    SizeMismatch,
    #[error("redundant block singular; decrease eps or n_occ")]
    SingularRedundantBlock,
    #[error("root block singular")]
    SingularRoot,
    #[error("root block too large ({size} > {cap}); compression failed")]
    RootTooLarge { size: usize, cap: usize },
    #[error("tree invalidated; rebuild required")]
    TreeInvalidated,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("serialization: {0}")]
    Serial(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
