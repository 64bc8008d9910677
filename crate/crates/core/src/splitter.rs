//! Hierarchical AST splitting and reconstruction.
//!
//! A method tree is decomposed into block-level subtrees: one overview
//! tree, one signature tree, one statements' block per maximal run of
//! simple statements directly under `MethBody`, and one block tree per
//! composite statement. Nested composites are split out one level at a
//! time, each leaving a placeholder leaf behind; a structure tree
//! records which subtree fills which placeholder, so the full tree can
//! be stitched back losslessly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::MethodAst;
use crate::tree::{labels, NodeClass, NodeId, Tree, TreeNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SubtreeKind {
    OvT,
    SigT,
    StmtsT,
    BlockT,
}

/// One split-out subtree. `placeholders` pairs a leaf of `tree` with
/// the index (into [`SplitResult::subtrees`]) of the subtree that fills
/// it, ordered by the leaf's preorder position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subtree {
    pub kind: SubtreeKind,
    pub tree: Tree,
    pub placeholders: Vec<(NodeId, usize)>,
}

/// Tree over subtree indices; the root is always index 0 (the OvT) and
/// edges are recorded in structure-preorder.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StructureTree {
    pub edges: Vec<(usize, usize)>,
}

impl StructureTree {
    pub fn root_index(&self) -> usize {
        0
    }

    pub fn node_count(&self) -> usize {
        self.edges.len() + 1
    }

    pub fn children(&self, parent: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges
            .iter()
            .filter(move |(p, _)| *p == parent)
            .map(|&(_, c)| c)
    }

    /// Depth measured in subtrees; a lone OvT has depth 1.
    pub fn depth(&self) -> usize {
        fn go(t: &StructureTree, n: usize) -> usize {
            1 + t.children(n).map(|c| go(t, c)).max().unwrap_or(0)
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitResult {
    /// Subtrees in structure-tree preorder; index 0 is the OvT.
    pub subtrees: Vec<Subtree>,
    pub structure: StructureTree,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StitchError {
    #[error("placeholder refers to subtree {child} but only {count} subtrees exist")]
    DanglingIndex { child: usize, count: usize },
    #[error("placeholder node {node} out of range for subtree {subtree}")]
    DanglingNode { subtree: usize, node: NodeId },
    #[error("subtree {0} reached twice while stitching")]
    Cycle(usize),
    #[error("stitched tree is not a method tree: {0}")]
    NotAMethod(String),
}

/// Statement-list containers and how many leading children to skip
/// before grouping (`Case` keeps its label expression, `Catch` its
/// parameter).
fn stmt_list_skip(label: &str) -> Option<usize> {
    match label {
        "MethBody" | "Then" | "Else" | "Body" | "Default" | "Finally" | "Block" => Some(0),
        "Case" | "Catch" => Some(1),
        _ => None,
    }
}

/// Inserts `StatementsBlock` grouping nodes over every maximal run of
/// consecutive simple statements in every statement-list position.
/// Idempotent: grouping nodes are not simple statements themselves.
pub fn canonicalize(ast: &MethodAst) -> Tree {
    let mut nested = ast.tree().to_nested();
    canon_node(&mut nested);
    Tree::from_nested(nested)
}

fn canon_node(node: &mut TreeNode) {
    for child in &mut node.children {
        canon_node(child);
    }
    if let Some(skip) = stmt_list_skip(&node.label) {
        let rest = node.children.split_off(skip);
        let mut run: Vec<TreeNode> = Vec::new();
        for child in rest {
            if child.class == NodeClass::SimpleStmt {
                run.push(child);
            } else {
                flush_run(&mut node.children, &mut run);
                node.children.push(child);
            }
        }
        flush_run(&mut node.children, &mut run);
    }
}

fn flush_run(out: &mut Vec<TreeNode>, run: &mut Vec<TreeNode>) {
    if !run.is_empty() {
        out.push(
            TreeNode::new(labels::STATEMENTS_BLOCK, NodeClass::ExpressionPart)
                .with_children(std::mem::take(run)),
        );
    }
}

/// Splits a method tree into its subtree set and structure tree.
pub fn split(ast: &MethodAst) -> SplitResult {
    let canon = canonicalize(ast);
    let nested = canon.to_nested();
    let mut children = nested.children.into_iter();
    let sig = children.next().expect("method tree has MethSig");
    let body = children.next().expect("method tree has MethBody");

    let mut builder = Builder {
        subtrees: Vec::new(),
        edges: Vec::new(),
    };

    // Overview tree: signature and every top-level segment become
    // placeholder leaves under a fresh Root/MethBody skeleton.
    let mut paths = vec![vec![0]];
    let mut pending = vec![(sig, SubtreeKind::SigT)];
    let mut ov_body = TreeNode::new(labels::METH_BODY, NodeClass::ExpressionPart);
    for (i, child) in body.children.into_iter().enumerate() {
        let kind = if child.label == labels::STATEMENTS_BLOCK {
            SubtreeKind::StmtsT
        } else {
            SubtreeKind::BlockT
        };
        paths.push(vec![1, i]);
        ov_body.push(TreeNode {
            label: child.label.clone(),
            class: child.class,
            children: Vec::new(),
        });
        pending.push((child, kind));
    }
    let overview = TreeNode::new(labels::ROOT, NodeClass::ExpressionPart).with_children(vec![
        TreeNode::new(labels::METH_SIG, NodeClass::SignaturePart),
        ov_body,
    ]);
    builder.finish(SubtreeKind::OvT, overview, paths, pending);

    SplitResult {
        subtrees: builder.subtrees,
        structure: StructureTree {
            edges: builder.edges,
        },
    }
}

struct Builder {
    subtrees: Vec<Subtree>,
    edges: Vec<(usize, usize)>,
}

impl Builder {
    /// Extracts one StmtsT/BlockT: composite statements strictly below
    /// the root become placeholders and are split out one level at a
    /// time, depth-first, so subtree indices follow structure preorder.
    fn extract_block(&mut self, nested: TreeNode, kind: SubtreeKind) -> usize {
        let mut paths = Vec::new();
        let mut pending = Vec::new();
        let root_class = nested.class;
        let root_label = nested.label;
        let children = nested
            .children
            .into_iter()
            .enumerate()
            .map(|(i, c)| strip_composites(c, &mut paths, &mut pending, &mut vec![i]))
            .collect();
        let transformed = TreeNode {
            label: root_label,
            class: root_class,
            children,
        };
        let pending = pending
            .into_iter()
            .map(|n| (n, SubtreeKind::BlockT))
            .collect();
        self.finish(kind, transformed, paths, pending)
    }

    fn finish(
        &mut self,
        kind: SubtreeKind,
        transformed: TreeNode,
        paths: Vec<Vec<usize>>,
        pending: Vec<(TreeNode, SubtreeKind)>,
    ) -> usize {
        let index = self.subtrees.len();
        let tree = Tree::from_nested(transformed);
        let ids: Vec<NodeId> = paths.iter().map(|p| resolve_path(&tree, p)).collect();
        self.subtrees.push(Subtree {
            kind,
            tree,
            placeholders: Vec::new(),
        });
        let mut placeholders = Vec::with_capacity(pending.len());
        for (node_id, (child, child_kind)) in ids.into_iter().zip(pending) {
            let child_index = match child_kind {
                SubtreeKind::SigT => {
                    self.finish(SubtreeKind::SigT, child, Vec::new(), Vec::new())
                }
                k => self.extract_block(child, k),
            };
            self.edges.push((index, child_index));
            placeholders.push((node_id, child_index));
        }
        self.subtrees[index].placeholders = placeholders;
        index
    }
}

fn strip_composites(
    node: TreeNode,
    paths: &mut Vec<Vec<usize>>,
    pending: &mut Vec<TreeNode>,
    path: &mut Vec<usize>,
) -> TreeNode {
    if node.class == NodeClass::CompositeStmt {
        paths.push(path.clone());
        let placeholder = TreeNode {
            label: node.label.clone(),
            class: node.class,
            children: Vec::new(),
        };
        pending.push(node);
        return placeholder;
    }
    let children = node
        .children
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            path.push(i);
            let out = strip_composites(c, paths, pending, path);
            path.pop();
            out
        })
        .collect();
    TreeNode {
        label: node.label,
        class: node.class,
        children,
    }
}

fn resolve_path(tree: &Tree, path: &[usize]) -> NodeId {
    let mut id = tree.root();
    for &step in path {
        id = tree.node(id).children[step];
    }
    id
}

/// Reconstructs the canonical full tree by stuffing every subtree back
/// into its placeholder.
pub fn stitch(result: &SplitResult) -> Result<MethodAst, StitchError> {
    let mut visited = vec![false; result.subtrees.len()];
    let nested = stitch_subtree(result, 0, &mut visited)?;
    MethodAst::from_tree(Tree::from_nested(nested)).map_err(StitchError::NotAMethod)
}

fn stitch_subtree(
    result: &SplitResult,
    index: usize,
    visited: &mut Vec<bool>,
) -> Result<TreeNode, StitchError> {
    if visited[index] {
        return Err(StitchError::Cycle(index));
    }
    visited[index] = true;
    let subtree = &result.subtrees[index];
    for &(node, child) in &subtree.placeholders {
        if child >= result.subtrees.len() {
            return Err(StitchError::DanglingIndex {
                child,
                count: result.subtrees.len(),
            });
        }
        if node >= subtree.tree.len() {
            return Err(StitchError::DanglingNode {
                subtree: index,
                node,
            });
        }
    }
    build_stitched(result, subtree, subtree.tree.root(), visited)
}

fn build_stitched(
    result: &SplitResult,
    subtree: &Subtree,
    node_id: NodeId,
    visited: &mut Vec<bool>,
) -> Result<TreeNode, StitchError> {
    if let Some(&(_, child)) = subtree.placeholders.iter().find(|(n, _)| *n == node_id) {
        return stitch_subtree(result, child, visited);
    }
    let node = subtree.tree.node(node_id);
    let mut out = TreeNode::new(node.label.clone(), node.class);
    for &c in &node.children {
        out.push(build_stitched(result, subtree, c, visited)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitStats {
    pub subtree_count: usize,
    pub max_subtree_nodes: usize,
    pub max_subtree_depth: usize,
    pub full_tree_nodes: usize,
    pub full_tree_depth: usize,
}

pub fn split_stats(result: &SplitResult) -> SplitStats {
    let full = stitch(result).expect("split result is internally consistent");
    SplitStats {
        subtree_count: result.subtrees.len(),
        max_subtree_nodes: result.subtrees.iter().map(|s| s.tree.len()).max().unwrap_or(0),
        max_subtree_depth: result
            .subtrees
            .iter()
            .map(|s| s.tree.depth())
            .max()
            .unwrap_or(0),
        full_tree_nodes: full.len(),
        full_tree_depth: full.depth(),
    }
}

/// Wire format of one split, as emitted by the `split` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitDump {
    pub subtrees: Vec<SubtreeDump>,
    pub structure_edges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubtreeDump {
    pub kind: SubtreeKind,
    pub sexpr: String,
    /// `[node_idx, child_idx]` pairs; `node_idx` is the preorder index
    /// within this subtree, `child_idx` indexes `subtrees`.
    pub placeholders: Vec<(usize, usize)>,
}

impl SplitResult {
    pub fn to_dump(&self) -> SplitDump {
        SplitDump {
            subtrees: self
                .subtrees
                .iter()
                .map(|s| SubtreeDump {
                    kind: s.kind,
                    sexpr: s.tree.to_sexpr(),
                    placeholders: s.placeholders.clone(),
                })
                .collect(),
            structure_edges: self.structure.edges.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse_source, MethodAst};

    const FIG1: &str = include_str!("../tests/fixtures/fig1_method.java");

    fn parse(src: &str) -> MethodAst {
        parse_source(src).unwrap().ast
    }

    fn kinds(result: &SplitResult) -> Vec<SubtreeKind> {
        result.subtrees.iter().map(|s| s.kind).collect()
    }

    #[test]
    fn one_return_method_splits_into_three() {
        let result = split(&parse("void f() { return; }"));
        assert_eq!(
            kinds(&result),
            [SubtreeKind::OvT, SubtreeKind::SigT, SubtreeKind::StmtsT]
        );
        assert_eq!(result.structure.edges, [(0, 1), (0, 2)]);
    }

    #[test]
    fn fig1_method_splits_into_six() {
        use SubtreeKind::*;
        let result = split(&parse(FIG1));
        assert_eq!(kinds(&result), [OvT, SigT, StmtsT, BlockT, BlockT, StmtsT]);
        let mut edges = result.structure.edges.clone();
        edges.sort_unstable();
        assert_eq!(edges, [(0, 1), (0, 2), (0, 3), (0, 5), (3, 4)]);
        // The For block keeps its If placeholder.
        let for_block = &result.subtrees[3];
        assert_eq!(for_block.tree.node(0).label, "For");
        assert_eq!(for_block.placeholders.len(), 1);
        let (ph_node, ph_child) = for_block.placeholders[0];
        assert_eq!(for_block.tree.node(ph_node).label, "If");
        assert!(for_block.tree.node(ph_node).children.is_empty());
        assert_eq!(ph_child, 4);
        assert_eq!(result.subtrees[4].tree.node(0).label, "If");
        assert_eq!(split_stats(&result).subtree_count, 6);
    }

    #[test]
    fn placeholder_count_is_subtrees_minus_one() {
        for src in [
            "void f() { return; }",
            FIG1,
            "int g(int a) { while (a > 0) { for (;;) { if (a > 1) { a = a - 1; } } } return a; }",
        ] {
            let result = split(&parse(src));
            let total: usize = result.subtrees.iter().map(|s| s.placeholders.len()).sum();
            assert_eq!(total, result.subtrees.len() - 1);
            assert_eq!(result.structure.node_count(), result.subtrees.len());
        }
    }

    #[test]
    fn nested_chain_structure_depth() {
        let result = split(&parse(
            "int g(int a) { while (a > 0) { for (;;) { if (a > 1) { a = a - 1; } } } return a; }",
        ));
        // OvT -> While -> For -> If
        assert_eq!(result.structure.depth(), 4);
        let canon_depth = canonicalize(&parse(
            "int g(int a) { while (a > 0) { for (;;) { if (a > 1) { a = a - 1; } } } return a; }",
        ))
        .depth();
        let max_sub = result.subtrees.iter().map(|s| s.tree.depth()).max().unwrap();
        assert!(max_sub <= canon_depth);
    }

    #[test]
    fn stitch_round_trip_equals_canonical() {
        for src in [
            "void f() { return; }",
            FIG1,
            "int g(int a) { a++; { int b = a; b--; } if (a > 0) { return a; } return 0; }",
        ] {
            let ast = parse(src);
            let result = split(&ast);
            let stitched = stitch(&result).unwrap();
            assert_eq!(stitched.tree(), &canonicalize(&ast));
        }
    }

    #[test]
    fn one_return_stitch_has_single_statements_block() {
        let ast = parse("void f() { return; }");
        let stitched = stitch(&split(&ast)).unwrap();
        let body = stitched.node(stitched.node(0).children[1]);
        assert_eq!(body.children.len(), 1);
        assert_eq!(
            stitched.node(body.children[0]).label,
            labels::STATEMENTS_BLOCK
        );
    }

    #[test]
    fn canonicalize_is_idempotent() {
        let ast = parse(FIG1);
        let once = canonicalize(&ast);
        let twice = canonicalize(&MethodAst::from_tree(once.clone()).unwrap());
        assert_eq!(once, twice);
    }

    #[test]
    fn stitch_rejects_dangling_index() {
        let ast = parse("void f() { if (x) { y(); } }");
        let mut result = split(&ast);
        let count = result.subtrees.len();
        result.subtrees[0].placeholders[0].1 = 99;
        assert_eq!(
            stitch(&result),
            Err(StitchError::DanglingIndex { child: 99, count })
        );
    }

    #[test]
    fn ovt_terminal_vocabulary_is_closed() {
        use crate::tree::CompositeKind;
        let result = split(&parse(FIG1));
        let ovt = &result.subtrees[0];
        for id in ovt.tree.preorder() {
            let node = ovt.tree.node(id);
            if node.children.is_empty() {
                let ok = node.label == labels::STATEMENTS_BLOCK
                    || node.label == labels::METH_SIG
                    || CompositeKind::from_label(&node.label).is_some();
                assert!(ok, "unexpected OvT leaf {:?}", node.label);
            }
        }
    }

    #[test]
    fn dump_shape() {
        let result = split(&parse("void f() { return; }"));
        let dump = result.to_dump();
        let json = serde_json::to_string(&dump).unwrap();
        assert!(json.contains("\"subtrees\""), "{json}");
        assert!(json.contains("\"structure_edges\""), "{json}");
        assert!(json.contains("\"kind\":\"OvT\""), "{json}");
    }
}
