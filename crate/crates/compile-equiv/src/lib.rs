//! Compile-equivalence machinery: pull C source out of completions, compile
//! with optimization suppressed, group by normalized-assembly identity, and
//! classify what actually differs inside each group.
//!
//! Also hosts the lightweight C lexer shared with token-type analysis.

mod compiler;
mod diff;
mod extract;
mod group;
mod lex;

pub use compiler::{compile_many, CompileFailure, CompileSuccess, CompilerCmd};
pub use diff::{classify_diffs, line_kinds, strip_comments_and_blanks, DiffBreakdown, LineKind};
pub use extract::{extract_code, ExtractError};
pub use group::{group_by_asm, singleton_count, O0Group};
pub use lex::{comment_byte_mask, lex_c, LexError, LexToken, TokenClass};

pub use compiler::normalize_asm;
