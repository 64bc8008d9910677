//! Rooted ordered labeled trees stored in preorder, plus the canonical
//! s-expression rendering used by every tree-shaped interchange format.

use std::fmt;

/// Index of a node within its tree. Node 0 is always the root and the
/// node vector is always in preorder.
pub type NodeId = usize;

/// Role of a node, fixed at parse time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeClass {
    /// One of the nine block-introducing statement kinds.
    CompositeStmt,
    /// A statement that introduces no nested body (declaration,
    /// expression statement, return, break, continue, throw, block).
    SimpleStmt,
    /// `MethSig` and everything beneath it.
    SignaturePart,
    /// Any other interior node (expressions, branch wrappers, `Root`,
    /// `MethBody`, grouping nodes).
    ExpressionPart,
    /// Leaf carrying token text.
    Terminal,
}

/// The nine composite statement kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CompositeKind {
    If,
    For,
    While,
    DoWhile,
    Switch,
    Label,
    SynchBlock,
    Try,
    TryWith,
}

impl CompositeKind {
    pub const ALL: [CompositeKind; 9] = [
        CompositeKind::If,
        CompositeKind::For,
        CompositeKind::While,
        CompositeKind::DoWhile,
        CompositeKind::Switch,
        CompositeKind::Label,
        CompositeKind::SynchBlock,
        CompositeKind::Try,
        CompositeKind::TryWith,
    ];

    pub fn label(self) -> &'static str {
        match self {
            CompositeKind::If => "If",
            CompositeKind::For => "For",
            CompositeKind::While => "While",
            CompositeKind::DoWhile => "DoWhile",
            CompositeKind::Switch => "Switch",
            CompositeKind::Label => "Label",
            CompositeKind::SynchBlock => "SynchBlock",
            CompositeKind::Try => "Try",
            CompositeKind::TryWith => "TryWith",
        }
    }

    pub fn from_label(label: &str) -> Option<CompositeKind> {
        Self::ALL.iter().copied().find(|k| k.label() == label)
    }
}

impl fmt::Display for CompositeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Well-known structural labels.
pub mod labels {
    pub const ROOT: &str = "Root";
    pub const METH_SIG: &str = "MethSig";
    pub const METH_BODY: &str = "MethBody";
    pub const STATEMENTS_BLOCK: &str = "StatementsBlock";
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub label: String,
    pub class: NodeClass,
    pub children: Vec<NodeId>,
    pub parent: Option<NodeId>,
}

/// Owned nested node used while building trees recursively; flattened
/// into a [`Tree`] once the shape is final.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNode {
    pub label: String,
    pub class: NodeClass,
    pub children: Vec<TreeNode>,
}

impl TreeNode {
    pub fn new(label: impl Into<String>, class: NodeClass) -> Self {
        TreeNode {
            label: label.into(),
            class,
            children: Vec::new(),
        }
    }

    pub fn terminal(label: impl Into<String>) -> Self {
        TreeNode::new(label, NodeClass::Terminal)
    }

    pub fn with_children(mut self, children: Vec<TreeNode>) -> Self {
        self.children = children;
        self
    }

    pub fn push(&mut self, child: TreeNode) {
        self.children.push(child);
    }
}

/// A rooted ordered labeled tree. Node 0 is the root and nodes are
/// stored in preorder, so a node's index doubles as its preorder rank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    /// Flattens a nested node into preorder storage.
    pub fn from_nested(root: TreeNode) -> Tree {
        let mut nodes = Vec::new();
        flatten(&mut nodes, root, None);
        Tree { nodes }
    }

    pub fn leaf(label: impl Into<String>, class: NodeClass) -> Tree {
        Tree::from_nested(TreeNode::new(label, class))
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Depth of the tree: a single node has depth 1.
    pub fn depth(&self) -> usize {
        fn go(tree: &Tree, id: NodeId) -> usize {
            1 + tree.nodes[id]
                .children
                .iter()
                .map(|&c| go(tree, c))
                .max()
                .unwrap_or(0)
        }
        go(self, 0)
    }

    /// Node ids in preorder (identical to index order by construction).
    pub fn preorder(&self) -> impl Iterator<Item = NodeId> + '_ {
        0..self.nodes.len()
    }

    /// Labels of terminal-class leaves, in preorder.
    pub fn terminal_labels(&self) -> Vec<&str> {
        self.nodes
            .iter()
            .filter(|n| n.class == NodeClass::Terminal)
            .map(|n| n.label.as_str())
            .collect()
    }

    /// Rebuilds the nested form (labels cloned).
    pub fn to_nested(&self) -> TreeNode {
        fn go(tree: &Tree, id: NodeId) -> TreeNode {
            let node = &tree.nodes[id];
            TreeNode {
                label: node.label.clone(),
                class: node.class,
                children: node.children.iter().map(|&c| go(tree, c)).collect(),
            }
        }
        go(self, 0)
    }

    /// Canonical parenthesized rendering: `(` label children `)` with
    /// children space-separated; label characters `(`, `)`, `\` and
    /// whitespace escaped by backslash.
    pub fn to_sexpr(&self) -> String {
        let mut out = String::new();
        self.write_sexpr(0, &mut out);
        out
    }

    fn write_sexpr(&self, id: NodeId, out: &mut String) {
        let node = &self.nodes[id];
        out.push('(');
        for ch in node.label.chars() {
            if matches!(ch, '(' | ')' | '\\') || ch.is_whitespace() {
                out.push('\\');
            }
            out.push(ch);
        }
        for &c in &node.children {
            out.push(' ');
            self.write_sexpr(c, out);
        }
        out.push(')');
    }

    /// Reads a tree back from [`Tree::to_sexpr`] output. Node classes
    /// are not part of the format; leaves read as terminals and
    /// interior nodes as expression parts.
    pub fn parse_sexpr(text: &str) -> Result<Tree, SexprError> {
        let mut chars = text.char_indices().peekable();
        let root = parse_node(text, &mut chars)?;
        skip_ws(&mut chars);
        if let Some((pos, _)) = chars.next() {
            return Err(SexprError {
                offset: pos,
                message: "trailing input after tree".into(),
            });
        }
        Ok(Tree::from_nested(root))
    }
}

fn flatten(nodes: &mut Vec<Node>, nested: TreeNode, parent: Option<NodeId>) -> NodeId {
    let id = nodes.len();
    nodes.push(Node {
        label: nested.label,
        class: nested.class,
        children: Vec::with_capacity(nested.children.len()),
        parent,
    });
    for child in nested.children {
        let cid = flatten(nodes, child, Some(id));
        nodes[id].children.push(cid);
    }
    id
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("s-expression error at byte {offset}: {message}")]
pub struct SexprError {
    pub offset: usize,
    pub message: String,
}

type CharStream<'a> = std::iter::Peekable<std::str::CharIndices<'a>>;

fn skip_ws(chars: &mut CharStream<'_>) {
    while matches!(chars.peek(), Some((_, c)) if c.is_whitespace()) {
        chars.next();
    }
}

fn parse_node(text: &str, chars: &mut CharStream<'_>) -> Result<TreeNode, SexprError> {
    skip_ws(chars);
    match chars.next() {
        Some((_, '(')) => {}
        Some((pos, c)) => {
            return Err(SexprError {
                offset: pos,
                message: format!("expected '(', found {c:?}"),
            })
        }
        None => {
            return Err(SexprError {
                offset: text.len(),
                message: "expected '(', found end of input".into(),
            })
        }
    }
    let mut label = String::new();
    loop {
        match chars.peek().copied() {
            Some((_, '\\')) => {
                chars.next();
                match chars.next() {
                    Some((_, c)) => label.push(c),
                    None => {
                        return Err(SexprError {
                            offset: text.len(),
                            message: "dangling escape".into(),
                        })
                    }
                }
            }
            Some((_, c)) if c == '(' || c == ')' || c.is_whitespace() => break,
            Some((_, c)) => {
                chars.next();
                label.push(c);
            }
            None => {
                return Err(SexprError {
                    offset: text.len(),
                    message: "unterminated node".into(),
                })
            }
        }
    }
    if label.is_empty() {
        let offset = chars.peek().map(|&(p, _)| p).unwrap_or(text.len());
        return Err(SexprError {
            offset,
            message: "empty label".into(),
        });
    }
    let mut children = Vec::new();
    loop {
        skip_ws(chars);
        match chars.peek().copied() {
            Some((_, ')')) => {
                chars.next();
                break;
            }
            Some((_, '(')) => children.push(parse_node(text, chars)?),
            Some((pos, c)) => {
                return Err(SexprError {
                    offset: pos,
                    message: format!("expected child or ')', found {c:?}"),
                })
            }
            None => {
                return Err(SexprError {
                    offset: text.len(),
                    message: "unterminated node".into(),
                })
            }
        }
    }
    let class = if children.is_empty() {
        NodeClass::Terminal
    } else {
        NodeClass::ExpressionPart
    };
    Ok(TreeNode {
        label,
        class,
        children,
    })
}

/// Label-and-shape equality, ignoring node classes. This is the
/// equality contract for s-expression round trips, where classes are
/// not part of the wire format.
pub fn same_shape(a: &Tree, b: &Tree) -> bool {
    a.len() == b.len()
        && a.nodes.iter().zip(b.nodes.iter()).all(|(x, y)| {
            x.label == y.label && x.children == y.children && x.parent == y.parent
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(label: &str, children: Vec<TreeNode>) -> TreeNode {
        TreeNode::new(label, NodeClass::ExpressionPart).with_children(children)
    }

    #[test]
    fn single_node_sexpr() {
        let tree = Tree::leaf("X", NodeClass::Terminal);
        assert_eq!(tree.to_sexpr(), "(X)");
    }

    #[test]
    fn root_with_two_leaves() {
        let tree = Tree::from_nested(t(
            "Root",
            vec![TreeNode::terminal("A"), TreeNode::terminal("B")],
        ));
        assert_eq!(tree.to_sexpr(), "(Root (A) (B))");
    }

    #[test]
    fn escaping_round_trip() {
        let tree = Tree::from_nested(t(
            "has space",
            vec![
                TreeNode::terminal("a(b)c"),
                TreeNode::terminal("back\\slash"),
                TreeNode::terminal("\"a b\""),
            ],
        ));
        let text = tree.to_sexpr();
        let back = Tree::parse_sexpr(&text).unwrap();
        assert!(same_shape(&tree, &back));
        // Fixpoint: render-parse-render is stable.
        assert_eq!(back.to_sexpr(), text);
    }

    #[test]
    fn preorder_is_index_order() {
        let tree = Tree::from_nested(t(
            "r",
            vec![
                t("a", vec![TreeNode::terminal("b"), TreeNode::terminal("c")]),
                TreeNode::terminal("d"),
            ],
        ));
        let labels: Vec<_> = tree
            .preorder()
            .map(|id| tree.node(id).label.as_str())
            .collect();
        assert_eq!(labels, ["r", "a", "b", "c", "d"]);
        assert_eq!(tree.depth(), 3);
    }

    #[test]
    fn parse_errors_carry_offsets() {
        assert!(Tree::parse_sexpr("").is_err());
        assert!(Tree::parse_sexpr("(a (b)").is_err());
        assert!(Tree::parse_sexpr("(a) junk").is_err());
        assert!(Tree::parse_sexpr("()").is_err());
    }
}
