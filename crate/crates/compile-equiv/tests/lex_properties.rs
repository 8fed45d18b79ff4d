use compile_equiv::lex_c;
use proptest::prelude::*;

proptest! {
    /// Whenever the lexer accepts an input, the spans tile it exactly.
    #[test]
    fn spans_tile_any_accepted_input(src in "[ -~\\n\\t]{0,200}") {
        if let Ok(tokens) = lex_c(&src) {
            let mut cursor = 0usize;
            for t in &tokens {
                prop_assert_eq!(t.start, cursor);
                prop_assert!(t.end > t.start);
                cursor = t.end;
            }
            prop_assert_eq!(cursor, src.len());
        }
    }

    /// Reconstructing the source from spans gives the source back.
    #[test]
    fn span_concat_reconstructs(src in "[a-zA-Z0-9_ ;(){}+*/=<>!&|\\n\\t-]{0,200}") {
        if let Ok(tokens) = lex_c(&src) {
            let rebuilt: String = tokens.iter().map(|t| &src[t.start..t.end]).collect();
            prop_assert_eq!(rebuilt, src);
        }
    }
}
