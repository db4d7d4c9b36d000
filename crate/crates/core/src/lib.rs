//! Convert ISO 10303-21 (STEP) CAD files into entity-instance graphs, then
//! classify and retrieve them with a graph convolutional network that pools
//! node embeddings through a learned attention context.

pub mod gnn;
pub mod graph;
pub mod pipeline;
pub mod retrieval;
pub mod step;
pub mod table;
