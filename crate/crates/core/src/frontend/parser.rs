//! Recursive-descent parser from the token stream to a method tree.
//!
//! The grammar subset, node label inventory, and tree shapes are
//! documented in `docs/grammar.md`. Statements split into the nine
//! composite kinds plus simple statements; types are flattened into a
//! single type-text terminal.

use thiserror::Error;

use super::lexer::{Token, TokenKind};
use crate::tree::{CompositeKind, NodeClass, Tree, TreeNode};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at byte {offset}: expected {expected}, found {found}")]
pub struct ParseError {
    pub offset: usize,
    pub expected: String,
    pub found: String,
}

/// A parsed method: a [`Tree`] whose root is `Root` with children
/// `MethSig` and `MethBody`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodAst {
    tree: Tree,
}

impl MethodAst {
    pub fn tree(&self) -> &Tree {
        &self.tree
    }

    pub fn into_tree(self) -> Tree {
        self.tree
    }

    /// Wraps a tree that already satisfies the method-tree invariants.
    pub fn from_tree(tree: Tree) -> Result<MethodAst, String> {
        let root = tree.node(tree.root());
        if root.label != "Root" || root.children.len() != 2 {
            return Err("root must be Root with two children".into());
        }
        if tree.node(root.children[0]).label != "MethSig" {
            return Err("first child of Root must be MethSig".into());
        }
        if tree.node(root.children[1]).label != "MethBody" {
            return Err("second child of Root must be MethBody".into());
        }
        Ok(MethodAst { tree })
    }
}

impl std::ops::Deref for MethodAst {
    type Target = Tree;

    fn deref(&self) -> &Tree {
        &self.tree
    }
}

/// Parses exactly one method declaration from the token stream.
pub fn parse_method(tokens: &[Token]) -> Result<MethodAst, ParseError> {
    let mut parser = Parser { tokens, pos: 0 };
    let root = parser.method()?;
    if parser.pos < tokens.len() {
        return Err(parser.err("end of method"));
    }
    Ok(MethodAst {
        tree: Tree::from_nested(root),
    })
}

const MODIFIERS: &[&str] = &[
    "public",
    "private",
    "protected",
    "static",
    "final",
    "abstract",
    "synchronized",
    "native",
    "strictfp",
    "default",
];

const PRIMITIVES: &[&str] = &[
    "void", "boolean", "byte", "short", "int", "long", "char", "float", "double",
];

const ASSIGN_OPS: &[&str] = &[
    "=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>=", ">>>=",
];

// Binary operators by precedence, loosest first.
const BINARY_LEVELS: &[&[&str]] = &[
    &["||"],
    &["&&"],
    &["|"],
    &["^"],
    &["&"],
    &["==", "!="],
    &["<", ">", "<=", ">="],
    &["<<", ">>", ">>>"],
    &["+", "-"],
    &["*", "/", "%"],
];

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
}

fn expr_node(label: &str, children: Vec<TreeNode>) -> TreeNode {
    TreeNode::new(label, NodeClass::ExpressionPart).with_children(children)
}

fn stmt_node(label: &str, children: Vec<TreeNode>) -> TreeNode {
    TreeNode::new(label, NodeClass::SimpleStmt).with_children(children)
}

fn composite_node(kind: CompositeKind, children: Vec<TreeNode>) -> TreeNode {
    TreeNode::new(kind.label(), NodeClass::CompositeStmt).with_children(children)
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_at(&self, n: usize) -> Option<&Token> {
        self.tokens.get(self.pos + n)
    }

    fn peek_text(&self) -> Option<&str> {
        self.peek().map(|t| t.text.as_str())
    }

    fn at(&self, text: &str) -> bool {
        self.peek_text() == Some(text)
    }

    fn eat(&mut self, text: &str) -> bool {
        if self.at(text) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn err(&self, expected: &str) -> ParseError {
        let (offset, found) = match self.peek() {
            Some(t) => (t.offset, format!("{:?}", t.text)),
            None => (
                self.tokens.last().map(|t| t.offset + t.text.len()).unwrap_or(0),
                "end of input".to_string(),
            ),
        };
        ParseError {
            offset,
            expected: expected.to_string(),
            found,
        }
    }

    fn expect(&mut self, text: &str) -> Result<(), ParseError> {
        if self.eat(text) {
            Ok(())
        } else {
            Err(self.err(&format!("{text:?}")))
        }
    }

    fn expect_identifier(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Identifier => {
                let text = t.text.clone();
                self.pos += 1;
                Ok(text)
            }
            _ => Err(self.err("identifier")),
        }
    }

    // method := modifier* type ident "(" params? ")" throws? block
    fn method(&mut self) -> Result<TreeNode, ParseError> {
        let mut sig = TreeNode::new("MethSig", NodeClass::SignaturePart);
        while let Some(t) = self.peek() {
            if t.kind == TokenKind::Keyword && MODIFIERS.contains(&t.text.as_str()) {
                // `synchronized (` starts a statement, never a modifier here,
                // but at signature position it is always a modifier.
                sig.push(TreeNode::terminal(t.text.clone()));
                self.pos += 1;
            } else {
                break;
            }
        }
        let ret = self.type_text()?;
        sig.push(TreeNode::terminal(ret));
        let name = self.expect_identifier()?;
        sig.push(TreeNode::terminal(name));
        self.expect("(")?;
        if !self.at(")") {
            loop {
                self.eat("final");
                let ty = self.type_text()?;
                let pname = self.expect_identifier()?;
                sig.push(
                    TreeNode::new("Param", NodeClass::SignaturePart).with_children(vec![
                        TreeNode::terminal(ty),
                        TreeNode::terminal(pname),
                    ]),
                );
                if !self.eat(",") {
                    break;
                }
            }
        }
        self.expect(")")?;
        if self.eat("throws") {
            let mut throws = TreeNode::new("Throws", NodeClass::SignaturePart);
            loop {
                throws.push(TreeNode::terminal(self.qualified_name()?));
                if !self.eat(",") {
                    break;
                }
            }
            sig.push(throws);
        }
        let mut body = TreeNode::new("MethBody", NodeClass::ExpressionPart);
        self.expect("{")?;
        body.children = self.statements_until_brace()?;
        Ok(
            TreeNode::new("Root", NodeClass::ExpressionPart)
                .with_children(vec![sig, body]),
        )
    }

    fn statements_until_brace(&mut self) -> Result<Vec<TreeNode>, ParseError> {
        let mut stmts = Vec::new();
        loop {
            if self.eat("}") {
                return Ok(stmts);
            }
            if self.peek().is_none() {
                return Err(self.err("\"}\""));
            }
            if self.eat(";") {
                continue; // empty statement
            }
            stmts.push(self.statement()?);
        }
    }

    fn statement(&mut self) -> Result<TreeNode, ParseError> {
        let tok = self.peek().ok_or_else(|| self.err("statement"))?;
        match (tok.kind, tok.text.as_str()) {
            (TokenKind::Punctuation, "{") => {
                self.pos += 1;
                let stmts = self.statements_until_brace()?;
                Ok(stmt_node("Block", stmts))
            }
            (TokenKind::Keyword, "if") => self.if_statement(),
            (TokenKind::Keyword, "for") => self.for_statement(),
            (TokenKind::Keyword, "while") => {
                self.pos += 1;
                self.expect("(")?;
                let cond = self.expression()?;
                self.expect(")")?;
                let body = self.branch_body()?;
                Ok(composite_node(
                    CompositeKind::While,
                    vec![expr_node("Cond", vec![cond]), expr_node("Body", body)],
                ))
            }
            (TokenKind::Keyword, "do") => {
                self.pos += 1;
                let body = self.branch_body()?;
                self.expect("while")?;
                self.expect("(")?;
                let cond = self.expression()?;
                self.expect(")")?;
                self.expect(";")?;
                Ok(composite_node(
                    CompositeKind::DoWhile,
                    vec![expr_node("Body", body), expr_node("Cond", vec![cond])],
                ))
            }
            (TokenKind::Keyword, "switch") => self.switch_statement(),
            (TokenKind::Keyword, "synchronized") => {
                self.pos += 1;
                self.expect("(")?;
                let lock = self.expression()?;
                self.expect(")")?;
                self.expect("{")?;
                let body = self.statements_until_brace()?;
                Ok(composite_node(
                    CompositeKind::SynchBlock,
                    vec![expr_node("Lock", vec![lock]), expr_node("Body", body)],
                ))
            }
            (TokenKind::Keyword, "try") => self.try_statement(),
            (TokenKind::Keyword, "return") => {
                self.pos += 1;
                let mut children = Vec::new();
                if !self.at(";") {
                    children.push(self.expression()?);
                }
                self.expect(";")?;
                Ok(stmt_node("Return", children))
            }
            (TokenKind::Keyword, "break") | (TokenKind::Keyword, "continue") => {
                let label = if tok.text == "break" { "Break" } else { "Continue" };
                self.pos += 1;
                let mut children = Vec::new();
                if matches!(self.peek(), Some(t) if t.kind == TokenKind::Identifier) {
                    children.push(TreeNode::terminal(self.expect_identifier()?));
                }
                self.expect(";")?;
                Ok(stmt_node(label, children))
            }
            (TokenKind::Keyword, "throw") => {
                self.pos += 1;
                let expr = self.expression()?;
                self.expect(";")?;
                Ok(stmt_node("Throw", vec![expr]))
            }
            (TokenKind::Identifier, _)
                if matches!(self.peek_at(1), Some(t) if t.text == ":" )
                    && !matches!(self.peek_at(2), Some(t) if t.text == ":") =>
            {
                let name = self.expect_identifier()?;
                self.expect(":")?;
                let stmt = self.statement()?;
                Ok(composite_node(
                    CompositeKind::Label,
                    vec![TreeNode::terminal(name), stmt],
                ))
            }
            _ => self.declaration_or_expression_statement(),
        }
    }

    // Branch bodies flatten `{ ... }` into the statement list; a single
    // unbraced statement becomes a singleton list.
    fn branch_body(&mut self) -> Result<Vec<TreeNode>, ParseError> {
        if self.eat("{") {
            self.statements_until_brace()
        } else {
            Ok(vec![self.statement()?])
        }
    }

    fn if_statement(&mut self) -> Result<TreeNode, ParseError> {
        self.expect("if")?;
        self.expect("(")?;
        let cond = self.expression()?;
        self.expect(")")?;
        let then = self.branch_body()?;
        let mut children = vec![expr_node("Cond", vec![cond]), expr_node("Then", then)];
        if self.eat("else") {
            let els = if self.at("if") {
                vec![self.if_statement()?]
            } else {
                self.branch_body()?
            };
            children.push(expr_node("Else", els));
        }
        Ok(composite_node(CompositeKind::If, children))
    }

    fn for_statement(&mut self) -> Result<TreeNode, ParseError> {
        self.expect("for")?;
        self.expect("(")?;
        // for-each: `Type name : expr`
        let probe = self.pos;
        if let Ok(each) = self.try_foreach_header() {
            let body = {
                self.expect(")")?;
                self.branch_body()?
            };
            return Ok(composite_node(
                CompositeKind::For,
                vec![each, expr_node("Body", body)],
            ));
        }
        self.pos = probe;

        let mut children = Vec::new();
        if !self.at(";") {
            let init = if self.declaration_ahead() {
                vec![self.local_var_decl()?]
            } else {
                self.expression_list()?
            };
            children.push(expr_node("Init", init));
        }
        self.expect(";")?;
        if !self.at(";") {
            children.push(expr_node("Cond", vec![self.expression()?]));
        }
        self.expect(";")?;
        if !self.at(")") {
            children.push(expr_node("Update", self.expression_list()?));
        }
        self.expect(")")?;
        let body = self.branch_body()?;
        children.push(expr_node("Body", body));
        Ok(composite_node(CompositeKind::For, children))
    }

    fn try_foreach_header(&mut self) -> Result<TreeNode, ParseError> {
        self.eat("final");
        let ty = self.type_text()?;
        let name = self.expect_identifier()?;
        self.expect(":")?;
        let iter = self.expression()?;
        Ok(expr_node(
            "Each",
            vec![TreeNode::terminal(ty), TreeNode::terminal(name), iter],
        ))
    }

    fn switch_statement(&mut self) -> Result<TreeNode, ParseError> {
        self.expect("switch")?;
        self.expect("(")?;
        let selector = self.expression()?;
        self.expect(")")?;
        self.expect("{")?;
        let mut children = vec![expr_node("Selector", vec![selector])];
        loop {
            if self.eat("}") {
                break;
            }
            if self.eat("case") {
                let label = self.expression()?;
                self.expect(":")?;
                let stmts = self.case_body()?;
                let mut case = expr_node("Case", vec![label]);
                case.children.extend(stmts);
                children.push(case);
            } else if self.eat("default") {
                self.expect(":")?;
                children.push(expr_node("Default", self.case_body()?));
            } else {
                return Err(self.err("\"case\", \"default\" or \"}\""));
            }
        }
        Ok(composite_node(CompositeKind::Switch, children))
    }

    fn case_body(&mut self) -> Result<Vec<TreeNode>, ParseError> {
        let mut stmts = Vec::new();
        while let Some(t) = self.peek() {
            if t.text == "case" || t.text == "default" || t.text == "}" {
                break;
            }
            if self.eat(";") {
                continue;
            }
            stmts.push(self.statement()?);
        }
        Ok(stmts)
    }

    fn try_statement(&mut self) -> Result<TreeNode, ParseError> {
        self.expect("try")?;
        let mut children = Vec::new();
        let kind = if self.eat("(") {
            let mut resources = TreeNode::new("Resources", NodeClass::ExpressionPart);
            loop {
                resources.push(self.local_var_decl()?);
                if !self.eat(";") || self.at(")") {
                    break;
                }
            }
            self.expect(")")?;
            children.push(resources);
            CompositeKind::TryWith
        } else {
            CompositeKind::Try
        };
        self.expect("{")?;
        children.push(expr_node("Body", self.statements_until_brace()?));
        let mut saw_handler = false;
        while self.eat("catch") {
            saw_handler = true;
            self.expect("(")?;
            self.eat("final");
            let ty = self.type_text()?;
            let name = self.expect_identifier()?;
            self.expect(")")?;
            self.expect("{")?;
            let mut catch = expr_node(
                "Catch",
                vec![
                    TreeNode::new("Param", NodeClass::ExpressionPart).with_children(vec![
                        TreeNode::terminal(ty),
                        TreeNode::terminal(name),
                    ]),
                ],
            );
            catch.children.extend(self.statements_until_brace()?);
            children.push(catch);
        }
        if self.eat("finally") {
            saw_handler = true;
            self.expect("{")?;
            children.push(expr_node("Finally", self.statements_until_brace()?));
        }
        if !saw_handler && kind == CompositeKind::Try {
            return Err(self.err("\"catch\" or \"finally\""));
        }
        Ok(composite_node(kind, children))
    }

    fn declaration_or_expression_statement(&mut self) -> Result<TreeNode, ParseError> {
        if self.declaration_ahead() {
            let decl = self.local_var_decl()?;
            self.expect(";")?;
            Ok(decl)
        } else {
            let expr = self.expression()?;
            self.expect(";")?;
            Ok(stmt_node("ExprStmt", vec![expr]))
        }
    }

    // A statement starts a declaration iff a type followed by an
    // identifier parses from here. `a < b` fails the type probe because
    // `b` is not followed by a closing angle.
    fn declaration_ahead(&mut self) -> bool {
        let probe = self.pos;
        let is_decl = self.type_text().is_ok()
            && matches!(self.peek(), Some(t) if t.kind == TokenKind::Identifier);
        self.pos = probe;
        is_decl
    }

    fn local_var_decl(&mut self) -> Result<TreeNode, ParseError> {
        self.eat("final");
        let ty = self.type_text()?;
        let mut decl = stmt_node("LocalVar", vec![TreeNode::terminal(ty)]);
        loop {
            let name = self.expect_identifier()?;
            let mut var = expr_node("VarDecl", vec![TreeNode::terminal(name)]);
            if self.eat("=") {
                var.push(self.initializer()?);
            }
            decl.push(var);
            if !self.eat(",") {
                break;
            }
        }
        Ok(decl)
    }

    fn initializer(&mut self) -> Result<TreeNode, ParseError> {
        if self.at("{") {
            self.array_initializer()
        } else {
            self.expression()
        }
    }

    fn array_initializer(&mut self) -> Result<TreeNode, ParseError> {
        self.expect("{")?;
        let mut init = expr_node("ArrayInit", vec![]);
        if !self.at("}") {
            loop {
                init.push(self.initializer()?);
                if !self.eat(",") {
                    break;
                }
            }
        }
        self.expect("}")?;
        Ok(init)
    }

    fn expression_list(&mut self) -> Result<Vec<TreeNode>, ParseError> {
        let mut list = vec![self.expression()?];
        while self.eat(",") {
            list.push(self.expression()?);
        }
        Ok(list)
    }

    pub(crate) fn expression(&mut self) -> Result<TreeNode, ParseError> {
        self.assignment()
    }

    fn assignment(&mut self) -> Result<TreeNode, ParseError> {
        let lhs = self.ternary()?;
        if let Some(t) = self.peek() {
            if t.kind == TokenKind::Operator && ASSIGN_OPS.contains(&t.text.as_str()) {
                let op = t.text.clone();
                self.pos += 1;
                let rhs = self.assignment()?;
                return Ok(expr_node(
                    "Assign",
                    vec![lhs, TreeNode::terminal(op), rhs],
                ));
            }
        }
        Ok(lhs)
    }

    fn ternary(&mut self) -> Result<TreeNode, ParseError> {
        let cond = self.binary(0)?;
        if self.eat("?") {
            let then = self.assignment()?;
            self.expect(":")?;
            let els = self.assignment()?;
            return Ok(expr_node("Ternary", vec![cond, then, els]));
        }
        Ok(cond)
    }

    fn binary(&mut self, level: usize) -> Result<TreeNode, ParseError> {
        if level >= BINARY_LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.binary(level + 1)?;
        while let Some(t) = self.peek() {
            if t.kind != TokenKind::Operator || !BINARY_LEVELS[level].contains(&t.text.as_str()) {
                break;
            }
            let op = t.text.clone();
            self.pos += 1;
            let rhs = self.binary(level + 1)?;
            lhs = expr_node("BinOp", vec![lhs, TreeNode::terminal(op), rhs]);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<TreeNode, ParseError> {
        if let Some(t) = self.peek() {
            if t.kind == TokenKind::Operator
                && matches!(t.text.as_str(), "+" | "-" | "!" | "~" | "++" | "--")
            {
                let op = t.text.clone();
                self.pos += 1;
                let operand = self.unary()?;
                return Ok(expr_node("Unary", vec![TreeNode::terminal(op), operand]));
            }
        }
        if self.at("(") {
            if let Some(cast) = self.try_cast()? {
                return Ok(cast);
            }
        }
        self.postfix()
    }

    // `(Type) operand` versus a parenthesized expression. A cast needs
    // the parens to hold a well-formed type and the next token to start
    // an operand; `+`/`-` after the parens only counts for primitives.
    fn try_cast(&mut self) -> Result<Option<TreeNode>, ParseError> {
        let probe = self.pos;
        self.expect("(")?;
        let primitive = matches!(self.peek(), Some(t) if t.kind == TokenKind::Keyword);
        let ty = match self.type_text() {
            Ok(ty) => ty,
            Err(_) => {
                self.pos = probe;
                return Ok(None);
            }
        };
        if !self.eat(")") {
            self.pos = probe;
            return Ok(None);
        }
        let starts_operand = match self.peek() {
            Some(t) => match t.kind {
                TokenKind::Identifier
                | TokenKind::IntLiteral
                | TokenKind::FloatLiteral
                | TokenKind::StringLiteral
                | TokenKind::CharLiteral => true,
                TokenKind::Keyword => {
                    matches!(t.text.as_str(), "this" | "super" | "new" | "true" | "false" | "null")
                }
                TokenKind::Operator => {
                    t.text == "!" || t.text == "~" || (primitive && (t.text == "+" || t.text == "-"))
                }
                TokenKind::Punctuation => t.text == "(",
            },
            None => false,
        };
        if !starts_operand {
            self.pos = probe;
            return Ok(None);
        }
        let operand = self.unary()?;
        Ok(Some(expr_node(
            "Cast",
            vec![TreeNode::terminal(ty), operand],
        )))
    }

    fn postfix(&mut self) -> Result<TreeNode, ParseError> {
        let mut expr = self.primary()?;
        loop {
            match self.peek_text() {
                Some(".") => {
                    self.pos += 1;
                    let name = self.expect_identifier()?;
                    expr = expr_node("FieldAccess", vec![expr, TreeNode::terminal(name)]);
                }
                Some("[") => {
                    self.pos += 1;
                    let index = self.expression()?;
                    self.expect("]")?;
                    expr = expr_node("Index", vec![expr, index]);
                }
                Some("(") => {
                    let args = self.argument_list()?;
                    expr = expr_node("Call", vec![expr, args]);
                }
                Some("++") | Some("--") => {
                    let op = self.peek_text().unwrap().to_string();
                    self.pos += 1;
                    expr = expr_node("Postfix", vec![expr, TreeNode::terminal(op)]);
                }
                _ => break,
            }
        }
        Ok(expr)
    }

    fn argument_list(&mut self) -> Result<TreeNode, ParseError> {
        self.expect("(")?;
        let mut args = expr_node("Args", vec![]);
        if !self.at(")") {
            loop {
                args.push(self.expression()?);
                if !self.eat(",") {
                    break;
                }
            }
        }
        self.expect(")")?;
        Ok(args)
    }

    fn primary(&mut self) -> Result<TreeNode, ParseError> {
        let tok = self.peek().ok_or_else(|| self.err("expression"))?.clone();
        match tok.kind {
            TokenKind::IntLiteral
            | TokenKind::FloatLiteral
            | TokenKind::StringLiteral
            | TokenKind::CharLiteral
            | TokenKind::Identifier => {
                self.pos += 1;
                Ok(TreeNode::terminal(tok.text))
            }
            TokenKind::Keyword => match tok.text.as_str() {
                "this" | "super" | "true" | "false" | "null" => {
                    self.pos += 1;
                    Ok(TreeNode::terminal(tok.text))
                }
                "new" => self.allocation(),
                _ => Err(self.err("expression")),
            },
            TokenKind::Punctuation if tok.text == "(" => {
                self.pos += 1;
                let inner = self.expression()?;
                self.expect(")")?;
                Ok(inner)
            }
            _ => Err(self.err("expression")),
        }
    }

    fn allocation(&mut self) -> Result<TreeNode, ParseError> {
        self.expect("new")?;
        let ty = self.base_type_text()?;
        if self.at("(") {
            let args = self.argument_list()?;
            if self.at("{") {
                return Err(self.err("end of allocation (anonymous classes unsupported)"));
            }
            return Ok(expr_node("New", vec![TreeNode::terminal(ty), args]));
        }
        if self.at("[") {
            // `new T[] {...}` or `new T[e]([e])* ([])*`
            if matches!(self.peek_at(1), Some(t) if t.text == "]") {
                while self.eat("[") {
                    self.expect("]")?;
                }
                let init = self.array_initializer()?;
                return Ok(expr_node(
                    "NewArray",
                    vec![TreeNode::terminal(ty), init],
                ));
            }
            let mut dims = Vec::new();
            while self.eat("[") {
                if self.eat("]") {
                    continue;
                }
                dims.push(self.expression()?);
                self.expect("]")?;
            }
            let mut node = expr_node("NewArray", vec![TreeNode::terminal(ty)]);
            node.children.extend(dims);
            return Ok(node);
        }
        Err(self.err("\"(\" or \"[\""))
    }

    fn qualified_name(&mut self) -> Result<String, ParseError> {
        let mut name = self.expect_identifier()?;
        while self.at(".") {
            if !matches!(self.peek_at(1), Some(t) if t.kind == TokenKind::Identifier) {
                break;
            }
            self.pos += 1;
            name.push('.');
            name.push_str(&self.expect_identifier()?);
        }
        Ok(name)
    }

    // Flattened type text: qualified name or primitive, generic
    // arguments, then array dims, joined without whitespace.
    fn type_text(&mut self) -> Result<String, ParseError> {
        let mut text = match self.peek() {
            Some(t) if t.kind == TokenKind::Keyword && PRIMITIVES.contains(&t.text.as_str()) => {
                let s = t.text.clone();
                self.pos += 1;
                s
            }
            Some(t) if t.kind == TokenKind::Identifier => self.qualified_name()?,
            _ => return Err(self.err("type")),
        };
        if self.at("<") {
            text.push_str(&self.generic_suffix()?);
        }
        while self.at("[") && matches!(self.peek_at(1), Some(t) if t.text == "]") {
            self.pos += 2;
            text.push_str("[]");
        }
        Ok(text)
    }

    // Type without generics/dims, for `new` (dims parsed separately).
    fn base_type_text(&mut self) -> Result<String, ParseError> {
        let mut text = match self.peek() {
            Some(t) if t.kind == TokenKind::Keyword && PRIMITIVES.contains(&t.text.as_str()) => {
                let s = t.text.clone();
                self.pos += 1;
                s
            }
            Some(t) if t.kind == TokenKind::Identifier => self.qualified_name()?,
            _ => return Err(self.err("type")),
        };
        if self.at("<") {
            text.push_str(&self.generic_suffix()?);
        }
        Ok(text)
    }

    // Consumes a balanced `<...>` run. `>>` and `>>>` close two and
    // three levels because the lexer munches them as single operators.
    fn generic_suffix(&mut self) -> Result<String, ParseError> {
        let mut out = String::new();
        let mut depth = 0usize;
        loop {
            let t = self.peek().ok_or_else(|| self.err("\">\""))?.clone();
            let closes = match t.text.as_str() {
                "<" => {
                    depth += 1;
                    0
                }
                ">" => 1,
                ">>" => 2,
                ">>>" => 3,
                "," | "." | "?" | "[" | "]" => 0,
                "extends" | "super" => 0,
                _ if t.kind == TokenKind::Identifier => 0,
                _ if t.kind == TokenKind::Keyword && PRIMITIVES.contains(&t.text.as_str()) => 0,
                _ => return Err(self.err("type argument")),
            };
            if closes > depth {
                return Err(self.err("balanced \">\""));
            }
            depth -= closes;
            out.push_str(&t.text);
            self.pos += 1;
            if depth == 0 {
                return Ok(out);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::lexer::tokenize;
    use crate::tree::same_shape;

    fn parse(src: &str) -> MethodAst {
        parse_method(&tokenize(src).unwrap()).unwrap()
    }

    #[test]
    fn minimal_method_shape() {
        let ast = parse("void f() { return; }");
        assert_eq!(ast.to_sexpr(), "(Root (MethSig (void) (f)) (MethBody (Return)))");
    }

    #[test]
    fn if_then_trailing_statement() {
        let ast = parse("int f(int a) { if (a > 0) { return a; } return 0; }");
        let body = ast.node(ast.node(0).children[1]);
        assert_eq!(body.label, "MethBody");
        let kid_labels: Vec<_> = body
            .children
            .iter()
            .map(|&c| ast.node(c).label.as_str())
            .collect();
        assert_eq!(kid_labels, ["If", "Return"]);
        let if_node = ast.node(body.children[0]);
        assert_eq!(if_node.class, NodeClass::CompositeStmt);
        let if_kids: Vec<_> = if_node
            .children
            .iter()
            .map(|&c| ast.node(c).label.as_str())
            .collect();
        assert_eq!(if_kids, ["Cond", "Then"]);
    }

    #[test]
    fn terminals_contain_identifiers_and_literals_in_order() {
        let src = "public int addUp(int a, int b) { int c = a + b * 2; return c; }";
        let toks = tokenize(src).unwrap();
        let ast = parse(src);
        let terminals = ast.terminal_labels();
        let wanted: Vec<&str> = toks
            .iter()
            .filter(|t| {
                matches!(
                    t.kind,
                    TokenKind::Identifier
                        | TokenKind::IntLiteral
                        | TokenKind::FloatLiteral
                        | TokenKind::StringLiteral
                        | TokenKind::CharLiteral
                )
            })
            .map(|t| t.text.as_str())
            .collect();
        // `wanted` must be a subsequence of the terminal labels.
        let mut it = terminals.iter();
        for w in wanted {
            assert!(it.any(|t| *t == w), "missing terminal {w:?} in order");
        }
    }

    #[test]
    fn sexpr_round_trip() {
        let src = "private List<String> pick(Map<String, Integer> m, int k) { \
                   for (int i = 0; i < k; i++) { if (m.size() > i) { m.clear(); } } \
                   return new ArrayList<String>(); }";
        let ast = parse(src);
        let back = Tree::parse_sexpr(&ast.to_sexpr()).unwrap();
        assert!(same_shape(ast.tree(), &back));
    }

    #[test]
    fn composite_statement_kinds() {
        let src = r#"
            void walk(int n) {
                int i = 0;
                while (i < n) { i++; }
                do { i--; } while (i > 0);
                switch (n) { case 1: i = 1; break; default: i = 2; }
                lbl: for (;;) { break lbl; }
                synchronized (this) { i = 3; }
                try { i = 4; } catch (Exception e) { i = 5; } finally { i = 6; }
                try (Closeable c = open()) { i = 7; }
                for (String s : names) { use(s); }
            }
        "#;
        let ast = parse(src);
        let body = ast.node(ast.node(0).children[1]);
        let labels: Vec<_> = body
            .children
            .iter()
            .map(|&c| ast.node(c).label.as_str())
            .collect();
        assert_eq!(
            labels,
            ["LocalVar", "While", "DoWhile", "Switch", "Label", "SynchBlock", "Try", "TryWith", "For"]
        );
        for &c in &body.children[1..] {
            assert_eq!(ast.node(c).class, NodeClass::CompositeStmt);
        }
    }

    #[test]
    fn expressions_and_casts() {
        let ast = parse(
            "double g(int a, Object o) { double d = (double) a + 1.5; \
             Number n = (Number) o; boolean b = (a > 0) && !(a < -2); \
             return b ? d : (d = n.doubleValue()); }",
        );
        let s = ast.to_sexpr();
        assert!(s.contains("(Cast (double)"), "{s}");
        assert!(s.contains("(Cast (Number)"), "{s}");
        assert!(s.contains("(Ternary"), "{s}");
    }

    #[test]
    fn rejects_unsupported_constructs() {
        for src in [
            "void f() { Runnable r = () -> run(); }",
            "void f() { Runnable r = new Runnable() { }; }",
            "void f(int... xs) { }",
            "void f() { assert true; }",
            "@Override void f() { }",
            "void f() { } void g() { }",
        ] {
            let toks = tokenize(src).unwrap();
            assert!(parse_method(&toks).is_err(), "should reject {src:?}");
        }
    }

    #[test]
    fn parse_error_reports_offset_and_found() {
        let toks = tokenize("void f( { }").unwrap();
        let err = parse_method(&toks).unwrap_err();
        assert_eq!(err.offset, 8);
        assert_eq!(err.found, "\"{\"");
    }

    #[test]
    fn determinism() {
        let src = "int f(int x) { while (x > 0) { x--; } return x; }";
        assert_eq!(parse(src), parse(src));
    }
}
