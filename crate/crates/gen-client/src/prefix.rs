/// Empty thinking block injected at the start of the assistant turn so the
/// model treats its reasoning phase as already finished and emits the answer
/// directly.
pub const THINKING_SKIP_SEQUENCE: &str = "<think>\n\n</think>\n\n";

/// Renders the fixed two-turn chat prompt for a raw-completion endpoint.
///
/// Pure function: identical inputs produce byte-identical output. When
/// `thinking_skip` is set the assistant turn opens with
/// [`THINKING_SKIP_SEQUENCE`] before `forced_suffix`.
pub fn build_prefix(system: &str, user: &str, thinking_skip: bool, forced_suffix: &str) -> String {
    let mut out = String::with_capacity(
        system.len() + user.len() + forced_suffix.len() + THINKING_SKIP_SEQUENCE.len() + 64,
    );
    out.push_str("<|im_start|>system\n");
    out.push_str(system);
    out.push_str("<|im_end|>\n");
    out.push_str("<|im_start|>user\n");
    out.push_str(user);
    out.push_str("<|im_end|>\n");
    out.push_str("<|im_start|>assistant\n");
    if thinking_skip {
        out.push_str(THINKING_SKIP_SEQUENCE);
    }
    out.push_str(forced_suffix);
    out
}
