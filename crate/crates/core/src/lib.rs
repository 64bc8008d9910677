//! Code-summarization toolkit: parses Java methods, splits their ASTs
//! into block-level subtrees, encodes code and trees with recursive and
//! transformer networks, and decodes natural-language summaries with a
//! copy mechanism. Numeric code is generic over the scalar type so the
//! same model runs in f32 for training and in f64 for gradient checks.

pub mod frontend;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod preprocess;
pub mod splitter;
pub mod train;
pub mod tree;

pub use frontend::{ast_to_sexpr, parse_method, parse_source, MethodAst};
pub use tree::{CompositeKind, Node, NodeClass, NodeId, Tree, TreeNode};
