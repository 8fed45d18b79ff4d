use crate::lex::{comment_byte_mask, lex_c};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineKind {
    Blank,
    Comment,
    Exec,
}

/// How the differing lines inside one assembly-identical group break down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiffBreakdown {
    pub comment_fraction: f64,
    pub blank_fraction: f64,
    pub exec_fraction: f64,
    /// Total differing lines across all member-vs-representative diffs;
    /// fractions are over this count and sum to 1 whenever it is non-zero.
    pub diff_lines: usize,
}

impl DiffBreakdown {
    pub fn empty() -> Self {
        DiffBreakdown { comment_fraction: 0.0, blank_fraction: 0.0, exec_fraction: 0.0, diff_lines: 0 }
    }
}

/// Classifies each line: blank (whitespace only), comment (every non-blank
/// byte inside a comment span), else exec. A source that fails to lex gets an
/// empty comment mask, pushing its lines to exec rather than failing.
pub fn line_kinds(source: &str) -> Vec<LineKind> {
    let mask = match lex_c(source) {
        Ok(tokens) => comment_byte_mask(source, &tokens),
        Err(_) => vec![false; source.len()],
    };
    let mut kinds = Vec::new();
    let mut offset = 0usize;
    for line in source.split('\n') {
        let mut any = false;
        let mut all_comment = true;
        for (i, b) in line.bytes().enumerate() {
            if b.is_ascii_whitespace() {
                continue;
            }
            any = true;
            if !mask.get(offset + i).copied().unwrap_or(false) {
                all_comment = false;
            }
        }
        kinds.push(if !any {
            LineKind::Blank
        } else if all_comment {
            LineKind::Comment
        } else {
            LineKind::Exec
        });
        offset += line.len() + 1;
    }
    // split('\n') yields a final empty segment for newline-terminated text;
    // that segment is not a source line
    if source.ends_with('\n') {
        kinds.pop();
    }
    kinds
}

/// Longest-common-subsequence membership over two line sequences: marks which
/// lines of `a` and `b` are part of one LCS.
fn lcs_common(a: &[&str], b: &[&str]) -> (Vec<bool>, Vec<bool>) {
    let (n, m) = (a.len(), b.len());
    let mut dp = vec![0u32; (n + 1) * (m + 1)];
    let idx = |i: usize, j: usize| i * (m + 1) + j;
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            dp[idx(i, j)] = if a[i] == b[j] {
                dp[idx(i + 1, j + 1)] + 1
            } else {
                dp[idx(i + 1, j)].max(dp[idx(i, j + 1)])
            };
        }
    }
    let mut in_a = vec![false; n];
    let mut in_b = vec![false; m];
    let (mut i, mut j) = (0, 0);
    while i < n && j < m {
        if a[i] == b[j] {
            in_a[i] = true;
            in_b[j] = true;
            i += 1;
            j += 1;
        } else if dp[idx(i + 1, j)] >= dp[idx(i, j + 1)] {
            i += 1;
        } else {
            j += 1;
        }
    }
    (in_a, in_b)
}

/// Line-level diff of every group member against the representative; each
/// line missing from the common subsequence is classified and the kinds are
/// aggregated into fractions.
pub fn classify_diffs(representative: &str, members: &[&str]) -> DiffBreakdown {
    let rep_lines: Vec<&str> = representative.lines().collect();
    let rep_kinds = line_kinds(representative);
    let mut counts = [0usize; 3]; // blank, comment, exec

    for member in members {
        if *member == representative {
            continue;
        }
        let mem_lines: Vec<&str> = member.lines().collect();
        let mem_kinds = line_kinds(member);
        let (in_rep, in_mem) = lcs_common(&rep_lines, &mem_lines);
        for (i, common) in in_rep.iter().enumerate() {
            if !common {
                match rep_kinds[i] {
                    LineKind::Blank => counts[0] += 1,
                    LineKind::Comment => counts[1] += 1,
                    LineKind::Exec => counts[2] += 1,
                }
            }
        }
        for (j, common) in in_mem.iter().enumerate() {
            if !common {
                match mem_kinds[j] {
                    LineKind::Blank => counts[0] += 1,
                    LineKind::Comment => counts[1] += 1,
                    LineKind::Exec => counts[2] += 1,
                }
            }
        }
    }

    let total: usize = counts.iter().sum();
    if total == 0 {
        return DiffBreakdown::empty();
    }
    DiffBreakdown {
        blank_fraction: counts[0] as f64 / total as f64,
        comment_fraction: counts[1] as f64 / total as f64,
        exec_fraction: counts[2] as f64 / total as f64,
        diff_lines: total,
    }
}

/// Comment-removal oracle: drops comment spans, then drops blank lines.
/// When a pair's differences are all comments and blanks, the stripped texts
/// are byte-identical.
pub fn strip_comments_and_blanks(source: &str) -> String {
    let stripped = match lex_c(source) {
        Ok(tokens) => {
            let mask = comment_byte_mask(source, &tokens);
            source
                .bytes()
                .enumerate()
                .filter(|(i, _)| !mask[*i])
                .map(|(_, b)| b as char)
                .collect::<String>()
        }
        Err(_) => source.to_string(),
    };
    let mut out = String::with_capacity(stripped.len());
    for line in stripped.lines() {
        let trimmed = line.trim_end();
        if trimmed.trim().is_empty() {
            continue;
        }
        out.push_str(trimmed);
        out.push('\n');
    }
    out
}
