use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenClass {
    Keyword,
    Punctuation,
    Identifier,
    Operator,
    Whitespace,
    Comment,
    Number,
}

impl TokenClass {
    pub const ALL: [TokenClass; 7] = [
        TokenClass::Keyword,
        TokenClass::Punctuation,
        TokenClass::Identifier,
        TokenClass::Operator,
        TokenClass::Whitespace,
        TokenClass::Comment,
        TokenClass::Number,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TokenClass::Keyword => "keyword",
            TokenClass::Punctuation => "punctuation",
            TokenClass::Identifier => "identifier",
            TokenClass::Operator => "operator",
            TokenClass::Whitespace => "whitespace",
            TokenClass::Comment => "comment",
            TokenClass::Number => "number",
        }
    }

    /// Tie-break precedence for mixed-class model tokens: rarer, more
    /// diagnostic classes first.
    pub fn precedence(&self) -> usize {
        match self {
            TokenClass::Comment => 0,
            TokenClass::Whitespace => 1,
            TokenClass::Keyword => 2,
            TokenClass::Number => 3,
            TokenClass::Operator => 4,
            TokenClass::Punctuation => 5,
            TokenClass::Identifier => 6,
        }
    }
}

/// One lexed span; spans tile the source with no gaps or overlaps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LexToken {
    pub start: usize,
    pub end: usize,
    pub class: TokenClass,
}

#[derive(Debug, Error, PartialEq)]
pub enum LexError {
    #[error("unterminated block comment starting at byte {0}")]
    UnterminatedBlockComment(usize),
    #[error("unterminated string literal starting at byte {0}")]
    UnterminatedString(usize),
    #[error("unterminated character literal starting at byte {0}")]
    UnterminatedChar(usize),
}

const KEYWORDS: &[&str] = &[
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else",
    "enum", "extern", "float", "for", "goto", "if", "inline", "int", "long", "register",
    "restrict", "return", "short", "signed", "sizeof", "static", "struct", "switch", "typedef",
    "union", "unsigned", "void", "volatile", "while", "_Alignas", "_Alignof", "_Atomic", "_Bool",
    "_Complex", "_Generic", "_Imaginary", "_Noreturn", "_Static_assert", "_Thread_local",
];

const PUNCTUATION: &[u8] = b"(){}[];,";

const TWO_CHAR_OPS: &[&str] = &[
    "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "+=", "-=", "*=", "/=",
    "%=", "&=", "|=", "^=", "##",
];

fn is_ident_start(b: u8) -> bool {
    b.is_ascii_alphabetic() || b == b'_'
}

fn is_ident_continue(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

fn is_space(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\r' | b'\n' | 0x0b | 0x0c)
}

/// Single-pass C lexer for classification purposes.
///
/// Comment markers inside string and character literals are not comments;
/// literals themselves land in the identifier class, the closest bucket in a
/// seven-class taxonomy with no literal class (recorded as a reclassification
/// so tables can be re-cut).
pub fn lex_c(source: &str) -> Result<Vec<LexToken>, LexError> {
    let bytes = source.as_bytes();
    let n = bytes.len();
    let mut tokens = Vec::new();
    let mut pos = 0usize;

    while pos < n {
        let start = pos;
        let b = bytes[pos];
        let class = if b == b'/' && pos + 1 < n && bytes[pos + 1] == b'/' {
            pos += 2;
            while pos < n && bytes[pos] != b'\n' {
                pos += 1;
            }
            TokenClass::Comment
        } else if b == b'/' && pos + 1 < n && bytes[pos + 1] == b'*' {
            pos += 2;
            loop {
                if pos + 1 >= n {
                    return Err(LexError::UnterminatedBlockComment(start));
                }
                if bytes[pos] == b'*' && bytes[pos + 1] == b'/' {
                    pos += 2;
                    break;
                }
                pos += 1;
            }
            TokenClass::Comment
        } else if b == b'"' || b == b'\'' {
            let quote = b;
            pos += 1;
            loop {
                if pos >= n {
                    return Err(if quote == b'"' {
                        LexError::UnterminatedString(start)
                    } else {
                        LexError::UnterminatedChar(start)
                    });
                }
                if bytes[pos] == b'\\' && pos + 1 < n {
                    pos += 2;
                    continue;
                }
                if bytes[pos] == quote {
                    pos += 1;
                    break;
                }
                pos += 1;
            }
            TokenClass::Identifier
        } else if is_space(b) {
            while pos < n && is_space(bytes[pos]) {
                pos += 1;
            }
            TokenClass::Whitespace
        } else if is_ident_start(b) {
            while pos < n && is_ident_continue(bytes[pos]) {
                pos += 1;
            }
            if KEYWORDS.contains(&&source[start..pos]) {
                TokenClass::Keyword
            } else {
                TokenClass::Identifier
            }
        } else if b.is_ascii_digit() || (b == b'.' && pos + 1 < n && bytes[pos + 1].is_ascii_digit())
        {
            pos += 1;
            while pos < n {
                let c = bytes[pos];
                if c.is_ascii_alphanumeric() || c == b'.' || c == b'_' {
                    // exponent sign: e+ e- p+ p-
                    if matches!(c, b'e' | b'E' | b'p' | b'P')
                        && pos + 1 < n
                        && matches!(bytes[pos + 1], b'+' | b'-')
                    {
                        pos += 2;
                        continue;
                    }
                    pos += 1;
                } else {
                    break;
                }
            }
            TokenClass::Number
        } else if PUNCTUATION.contains(&b) {
            pos += 1;
            TokenClass::Punctuation
        } else {
            // operators, multi-char first
            let rest = &source[pos..];
            let advance = ["<<=", ">>=", "..."]
                .iter()
                .find(|op| rest.starts_with(**op))
                .map(|op| op.len())
                .or_else(|| {
                    TWO_CHAR_OPS.iter().find(|op| rest.starts_with(**op)).map(|op| op.len())
                })
                .unwrap_or_else(|| {
                    // any other single byte (covers # \ ? : . ~ ! etc.)
                    let mut it = rest.chars();
                    it.next().map(char::len_utf8).unwrap_or(1)
                });
            pos += advance;
            TokenClass::Operator
        };
        tokens.push(LexToken { start, end: pos, class });
    }
    Ok(tokens)
}

/// Per-byte mask of comment spans.
pub fn comment_byte_mask(source: &str, tokens: &[LexToken]) -> Vec<bool> {
    let mut mask = vec![false; source.len()];
    for t in tokens {
        if t.class == TokenClass::Comment {
            for slot in &mut mask[t.start..t.end] {
                *slot = true;
            }
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classes(src: &str) -> Vec<TokenClass> {
        lex_c(src).unwrap().into_iter().map(|t| t.class).collect()
    }

    #[test]
    fn hand_traced_declaration() {
        use TokenClass::*;
        assert_eq!(
            classes("int x = 42; // hi"),
            vec![
                Keyword, Whitespace, Identifier, Whitespace, Operator, Whitespace, Number,
                Punctuation, Whitespace, Comment
            ]
        );
    }

    #[test]
    fn comment_marker_inside_string_is_not_a_comment() {
        let toks = lex_c("\"/*not a comment*/\"").unwrap();
        assert_eq!(toks.len(), 1);
        assert_eq!(toks[0].class, TokenClass::Identifier);
    }

    #[test]
    fn empty_source_lexes_to_nothing() {
        assert_eq!(lex_c("").unwrap(), vec![]);
    }

    #[test]
    fn unterminated_block_comment_reports_offset() {
        assert_eq!(lex_c("int /* oops").unwrap_err(), LexError::UnterminatedBlockComment(4));
    }

    #[test]
    fn spans_tile_the_source() {
        let src = "int main(void) {\n  /* block */ return 1e-3 + 0x1Fu;\n}\n";
        let toks = lex_c(src).unwrap();
        let mut cursor = 0;
        for t in &toks {
            assert_eq!(t.start, cursor, "gap before {t:?}");
            assert!(t.end > t.start);
            cursor = t.end;
        }
        assert_eq!(cursor, src.len());
    }

    #[test]
    fn numbers_cover_hex_float_and_suffixes() {
        use TokenClass::*;
        assert_eq!(classes("0x1F"), vec![Number]);
        assert_eq!(classes("1e-3"), vec![Number]);
        assert_eq!(classes("42ull"), vec![Number]);
        assert_eq!(classes(".5f"), vec![Number]);
    }

    #[test]
    fn operators_and_punctuation_split() {
        use TokenClass::*;
        assert_eq!(classes("a->b"), vec![Identifier, Operator, Identifier]);
        assert_eq!(classes("x<<=2;"), vec![Identifier, Operator, Number, Punctuation]);
        assert_eq!(classes("#include"), vec![Operator, Identifier]);
    }

    #[test]
    fn escaped_quote_stays_in_literal() {
        let toks = lex_c(r#""a\"b""#).unwrap();
        assert_eq!(toks.len(), 1);
        assert_eq!(toks[0].end, 6);
    }
}
