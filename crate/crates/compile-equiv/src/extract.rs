use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ExtractError {
    #[error("completion contains no code after stripping scaffolding")]
    NoCode,
}

/// Pulls compilable source text out of a raw completion.
///
/// Strips one trailing stop token and one surrounding markdown fence when
/// present. Interior bytes are preserved exactly, so a fence marker inside a
/// string literal survives.
pub fn extract_code(completion: &str, stop_token: &str) -> Result<String, ExtractError> {
    let mut body = completion;
    if !stop_token.is_empty() {
        if let Some(stripped) = body.strip_suffix(stop_token) {
            body = stripped;
        }
    }

    // leading fence line: ``` or ```lang at the very start
    if body.starts_with("```") {
        body = match body.find('\n') {
            Some(pos) => &body[pos + 1..],
            None => "",
        };
    }

    // closing fence: a final line consisting of ``` alone
    let trimmed = body.trim_end();
    if let Some(before_fence) = trimmed.strip_suffix("```") {
        let line_start = before_fence.rfind('\n').map(|p| p + 1).unwrap_or(0);
        if trimmed[line_start..].trim() == "```" {
            body = &body[..line_start];
        }
    }

    if body.trim().is_empty() {
        return Err(ExtractError::NoCode);
    }
    Ok(body.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fence_and_stop_are_stripped() {
        let got = extract_code("```c\nint f(){}\n```</function>", "</function>").unwrap();
        assert_eq!(got, "int f(){}\n");
    }

    #[test]
    fn bare_code_only_loses_the_stop_token() {
        let got = extract_code("int f(){}</function>", "</function>").unwrap();
        assert_eq!(got, "int f(){}");
    }

    #[test]
    fn interior_fence_marker_survives() {
        let completion = "```c\nchar *s = \"```\";\nint g(){return 1;}\n```</function>";
        let got = extract_code(completion, "</function>").unwrap();
        assert_eq!(got, "char *s = \"```\";\nint g(){return 1;}\n");
    }

    #[test]
    fn empty_completion_is_no_code() {
        assert_eq!(extract_code("</function>", "</function>"), Err(ExtractError::NoCode));
        assert_eq!(extract_code("```c\n```</function>", "</function>"), Err(ExtractError::NoCode));
    }

    #[test]
    fn no_scaffolding_passes_through() {
        let src = "int main(void){return 0;}\n";
        assert_eq!(extract_code(src, "</function>").unwrap(), src);
    }
}
