//! Per-node random-walk diffusion features, deterministic graph-level
//! embeddings and k-means subgrouping of ID training graphs.

mod diffusion;
mod kmeans;
mod summary;

pub use diffusion::{diffusion_node_features, StructuralFeatures};
pub use kmeans::{kmeans, KMeansConfig, SubgroupAssignment};
pub use summary::{graph_summary_embedding, EmbeddingConfig, GraphEmbedder, GraphEmbedding};
