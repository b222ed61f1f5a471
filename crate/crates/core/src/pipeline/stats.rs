use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{graph_file_paths, load_graph};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub entities: usize,
    pub relations: usize,
    pub chunks: usize,
    /// Summed size of the graph files.
    pub bytes: u64,
}

pub fn stats(dir: &Path) -> Result<GraphStats> {
    let graph = load_graph(dir)?;
    let mut bytes = 0;
    for path in graph_file_paths(dir) {
        bytes += std::fs::metadata(&path).map_err(|e| Error::io(&path, e))?.len();
    }
    Ok(GraphStats {
        entities: graph.entity_count(),
        relations: graph.relation_count(),
        chunks: graph.chunk_count(),
        bytes,
    })
}
