//! Maximal-munch lexer for the supported Java-method subset.
//!
//! Whitespace and comments never reach the token list; the Javadoc
//! block immediately preceding the first token is kept aside for
//! summary extraction.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Identifier,
    Keyword,
    IntLiteral,
    FloatLiteral,
    StringLiteral,
    CharLiteral,
    Operator,
    Punctuation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("lex error at byte {offset}: {message}")]
pub struct LexError {
    pub offset: usize,
    pub message: String,
}

/// Token stream plus the Javadoc block (comment markers stripped off by
/// the consumer) that immediately precedes the first token, if any.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LexOutput {
    pub tokens: Vec<Token>,
    pub javadoc: Option<String>,
}

const KEYWORDS: &[&str] = &[
    "abstract", "assert", "boolean", "break", "byte", "case", "catch", "char", "class", "const",
    "continue", "default", "do", "double", "else", "enum", "extends", "false", "final", "finally",
    "float", "for", "goto", "if", "implements", "import", "instanceof", "int", "interface", "long",
    "native", "new", "null", "package", "private", "protected", "public", "return", "short",
    "static", "strictfp", "super", "switch", "synchronized", "this", "throw", "throws",
    "transient", "true", "try", "void", "volatile", "while",
];

// Longest first so maximal munch falls out of a linear scan.
const OPERATORS: &[&str] = &[
    ">>>=", ">>>", "<<=", ">>=", "...", "==", "!=", "<=", ">=", "&&", "||", "++", "--", "+=",
    "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<", ">>", "->", "::", "=", "<", ">", "+", "-",
    "*", "/", "%", "!", "~", "&", "|", "^", "?", ":", ".",
];

const PUNCTUATION: &[char] = &[';', ',', '(', ')', '{', '}', '[', ']', '@'];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.contains(&word)
}

/// Lexes `source`, returning the token list only.
pub fn tokenize(source: &str) -> Result<Vec<Token>, LexError> {
    lex(source).map(|out| out.tokens)
}

/// Lexes `source`, also capturing the leading Javadoc comment.
pub fn lex(source: &str) -> Result<LexOutput, LexError> {
    let bytes = source.as_bytes();
    let mut tokens = Vec::new();
    // (text, byte offset one past the closing `*/`)
    let mut last_javadoc: Option<(String, usize)> = None;
    let mut javadoc: Option<String> = None;
    let mut pos = 0;

    while pos < bytes.len() {
        let rest = &source[pos..];
        let c = rest.chars().next().unwrap();

        if c.is_whitespace() {
            pos += c.len_utf8();
            continue;
        }
        if rest.starts_with("//") {
            pos += rest.find('\n').map(|i| i + 1).unwrap_or(rest.len());
            continue;
        }
        if rest.starts_with("/*") {
            let end = rest.find("*/").ok_or_else(|| LexError {
                offset: pos,
                message: "unterminated block comment".into(),
            })?;
            if rest.starts_with("/**") {
                last_javadoc = Some((rest[..end + 2].to_string(), pos + end + 2));
            }
            pos += end + 2;
            continue;
        }

        // First real token: decide whether the last Javadoc sticks.
        if tokens.is_empty() {
            if let Some((text, end)) = last_javadoc.take() {
                if source[end..pos].chars().all(char::is_whitespace) {
                    javadoc = Some(text);
                }
            }
        }

        let start = pos;
        if c.is_alphabetic() || c == '_' || c == '$' {
            let mut end = pos;
            for ch in rest.chars() {
                if ch.is_alphanumeric() || ch == '_' || ch == '$' {
                    end += ch.len_utf8();
                } else {
                    break;
                }
            }
            let text = &source[start..end];
            let kind = if is_keyword(text) {
                TokenKind::Keyword
            } else {
                TokenKind::Identifier
            };
            tokens.push(Token {
                kind,
                text: text.to_string(),
                offset: start,
            });
            pos = end;
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && rest[1..].starts_with(|d: char| d.is_ascii_digit()))
        {
            let (len, kind) = lex_number(rest);
            tokens.push(Token {
                kind,
                text: rest[..len].to_string(),
                offset: start,
            });
            pos += len;
            continue;
        }
        if c == '"' || c == '\'' {
            let len = lex_quoted(rest, c).map_err(|msg| LexError {
                offset: start,
                message: msg,
            })?;
            let kind = if c == '"' {
                TokenKind::StringLiteral
            } else {
                TokenKind::CharLiteral
            };
            tokens.push(Token {
                kind,
                text: rest[..len].to_string(),
                offset: start,
            });
            pos += len;
            continue;
        }
        if PUNCTUATION.contains(&c) {
            tokens.push(Token {
                kind: TokenKind::Punctuation,
                text: c.to_string(),
                offset: start,
            });
            pos += 1;
            continue;
        }
        if let Some(op) = OPERATORS.iter().find(|op| rest.starts_with(**op)) {
            tokens.push(Token {
                kind: TokenKind::Operator,
                text: (*op).to_string(),
                offset: start,
            });
            pos += op.len();
            continue;
        }
        return Err(LexError {
            offset: start,
            message: format!("illegal character {c:?}"),
        });
    }

    Ok(LexOutput { tokens, javadoc })
}

fn lex_number(rest: &str) -> (usize, TokenKind) {
    let bytes = rest.as_bytes();
    let mut i = 0;
    let mut kind = TokenKind::IntLiteral;

    if rest.starts_with("0x") || rest.starts_with("0X") || rest.starts_with("0b")
        || rest.starts_with("0B")
    {
        i = 2;
        while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
            i += 1;
        }
        return (i, TokenKind::IntLiteral);
    }

    let digits = |bytes: &[u8], mut i: usize| {
        while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'_') {
            i += 1;
        }
        i
    };

    i = digits(bytes, i);
    if i < bytes.len() && bytes[i] == b'.' {
        kind = TokenKind::FloatLiteral;
        i = digits(bytes, i + 1);
    }
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        if j < bytes.len() && bytes[j].is_ascii_digit() {
            kind = TokenKind::FloatLiteral;
            i = digits(bytes, j);
        }
    }
    if i < bytes.len() {
        match bytes[i] {
            b'f' | b'F' | b'd' | b'D' => {
                kind = TokenKind::FloatLiteral;
                i += 1;
            }
            b'l' | b'L' if kind == TokenKind::IntLiteral => i += 1,
            _ => {}
        }
    }
    (i, kind)
}

fn lex_quoted(rest: &str, quote: char) -> Result<usize, String> {
    let mut chars = rest.char_indices().skip(1);
    while let Some((i, c)) = chars.next() {
        match c {
            '\\' => {
                if chars.next().is_none() {
                    break;
                }
            }
            '\n' => break,
            c if c == quote => return Ok(i + c.len_utf8()),
            _ => {}
        }
    }
    Err(if quote == '"' {
        "unterminated string literal".into()
    } else {
        "unterminated char literal".into()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<(TokenKind, String)> {
        tokenize(src)
            .unwrap()
            .into_iter()
            .map(|t| (t.kind, t.text))
            .collect()
    }

    #[test]
    fn simple_declaration() {
        use TokenKind::*;
        assert_eq!(
            kinds("int x = 1;"),
            vec![
                (Keyword, "int".into()),
                (Identifier, "x".into()),
                (Operator, "=".into()),
                (IntLiteral, "1".into()),
                (Punctuation, ";".into()),
            ]
        );
    }

    #[test]
    fn empty_input() {
        assert_eq!(tokenize("").unwrap(), vec![]);
    }

    #[test]
    fn string_literal_keeps_semicolon() {
        let toks = tokenize("String s = \"a;b\";").unwrap();
        assert_eq!(toks.len(), 5);
        assert_eq!(toks[3].kind, TokenKind::StringLiteral);
        assert_eq!(toks[3].text, "\"a;b\"");
    }

    #[test]
    fn offsets_slice_back_to_source() {
        let src = "public int  countAll(List xs) { return xs.size() + 0x1F; }";
        let toks = tokenize(src).unwrap();
        let mut prev = None;
        for t in &toks {
            assert_eq!(&src[t.offset..t.offset + t.text.len()], t.text);
            if let Some(p) = prev {
                assert!(t.offset > p);
            }
            prev = Some(t.offset);
        }
    }

    #[test]
    fn maximal_munch_operators() {
        let toks = tokenize("a >>>= b >>> c >= d").unwrap();
        let ops: Vec<_> = toks
            .iter()
            .filter(|t| t.kind == TokenKind::Operator)
            .map(|t| t.text.as_str())
            .collect();
        assert_eq!(ops, [">>>=", ">>>", ">="]);
    }

    #[test]
    fn numeric_forms() {
        use TokenKind::*;
        let toks = tokenize("1 1L 1_000 0x1F 0b101 1.5 1. .5 1e3 2.5e-2 3f 4d").unwrap();
        let expected = [
            IntLiteral,
            IntLiteral,
            IntLiteral,
            IntLiteral,
            IntLiteral,
            FloatLiteral,
            FloatLiteral,
            FloatLiteral,
            FloatLiteral,
            FloatLiteral,
            FloatLiteral,
            FloatLiteral,
        ];
        assert_eq!(toks.len(), expected.len());
        for (t, k) in toks.iter().zip(expected) {
            assert_eq!(t.kind, k, "token {:?}", t.text);
        }
    }

    #[test]
    fn unterminated_literals_fail() {
        assert!(tokenize("\"abc").is_err());
        assert!(tokenize("'a").is_err());
        assert!(tokenize("/* abc").is_err());
        let err = tokenize("int x = \"oops").unwrap_err();
        assert_eq!(err.offset, 8);
    }

    #[test]
    fn javadoc_captured_when_adjacent() {
        let out = lex("/** Sums. */\nint f() { return 1; }").unwrap();
        assert_eq!(out.javadoc.as_deref(), Some("/** Sums. */"));

        // A plain comment in between breaks adjacency.
        let out = lex("/** Sums. */ /* x */ int f() {}").unwrap();
        assert_eq!(out.javadoc, None);

        // Plain block comments are never captured.
        let out = lex("/* Sums. */\nint f() {}").unwrap();
        assert_eq!(out.javadoc, None);
    }

    #[test]
    fn comments_dropped() {
        let toks = tokenize("// line\nint x; /* block */ int y;").unwrap();
        let texts: Vec<_> = toks.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, ["int", "x", ";", "int", "y", ";"]);
    }
}
