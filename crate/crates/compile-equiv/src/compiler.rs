use std::io::Write;
use std::process::Command;

/// Standard headers prepended on the retry pass when a raw compile fails;
/// generated code routinely calls libc without writing its own includes.
pub const PREAMBLE: &str = "#include <stdlib.h>\n#include <string.h>\n#include <stdio.h>\n";

#[derive(Debug, Clone, PartialEq)]
pub struct CompileSuccess {
    pub asm: String,
    /// Whether the preamble retry was the variant that compiled.
    pub used_preamble: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompileFailure {
    pub raw_diag: String,
    pub preamble_diag: String,
}

impl std::fmt::Display for CompileFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "raw: {} | with preamble: {}", self.raw_diag.trim(), self.preamble_diag.trim())
    }
}

/// Compiler invocation template, `{in}` and `{out}` substituted per compile.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompilerCmd {
    template: String,
}

impl Default for CompilerCmd {
    fn default() -> Self {
        CompilerCmd { template: "gcc -S -O0 {in} -o {out}".to_string() }
    }
}

impl CompilerCmd {
    pub fn new(template: &str) -> Self {
        CompilerCmd { template: template.to_string() }
    }

    pub fn template(&self) -> &str {
        &self.template
    }

    /// Host triple reported by the compiler, recorded so group identities are
    /// never compared across ISAs by accident.
    pub fn target_triple(&self) -> Option<String> {
        let cc = self.template.split_whitespace().next()?;
        let out = Command::new(cc).arg("-dumpmachine").output().ok()?;
        if !out.status.success() {
            return None;
        }
        Some(String::from_utf8_lossy(&out.stdout).trim().to_string())
    }

    fn run_once(&self, source: &str) -> std::io::Result<Result<String, String>> {
        let dir = tempfile::tempdir()?;
        let src_path = dir.path().join("src.c");
        let out_path = dir.path().join("src.s");
        let mut f = std::fs::File::create(&src_path)?;
        f.write_all(source.as_bytes())?;
        drop(f);

        let mut parts = self.template.split_whitespace();
        let cc = parts.next().ok_or_else(|| {
            std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty compiler template")
        })?;
        let args: Vec<String> = parts
            .map(|p| {
                p.replace("{in}", &src_path.to_string_lossy())
                    .replace("{out}", &out_path.to_string_lossy())
            })
            .collect();
        let output = Command::new(cc).args(&args).output()?;
        if output.status.success() && out_path.exists() {
            Ok(Ok(std::fs::read_to_string(&out_path)?))
        } else {
            Ok(Err(String::from_utf8_lossy(&output.stderr).into_owned()))
        }
    }

    /// Compiles to assembly text; on failure retries once with the standard
    /// preamble prepended and records which variant succeeded.
    pub fn compile_to_asm(&self, source: &str) -> std::io::Result<Result<CompileSuccess, CompileFailure>> {
        let raw_diag = match self.run_once(source)? {
            Ok(asm) => return Ok(Ok(CompileSuccess { asm, used_preamble: false })),
            Err(diag) => diag,
        };
        let with_preamble = format!("{PREAMBLE}{source}");
        match self.run_once(&with_preamble)? {
            Ok(asm) => Ok(Ok(CompileSuccess { asm, used_preamble: true })),
            Err(preamble_diag) => Ok(Err(CompileFailure { raw_diag, preamble_diag })),
        }
    }
}

/// Compiles many sources, one process per compile, bounded by `jobs` worker
/// threads. Results come back keyed and ordered by ID.
pub fn compile_many<K: Ord + Clone + Send + Sync>(
    sources: &[(K, String)],
    cmd: &CompilerCmd,
    jobs: usize,
) -> std::collections::BTreeMap<K, std::io::Result<Result<CompileSuccess, CompileFailure>>> {
    let jobs = jobs.max(1);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results = std::sync::Mutex::new(std::collections::BTreeMap::new());
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(sources.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= sources.len() {
                    break;
                }
                let (key, source) = &sources[i];
                let outcome = cmd.compile_to_asm(source);
                results.lock().expect("results lock").insert(key.clone(), outcome);
            });
        }
    });
    results.into_inner().expect("results lock")
}

/// Canonicalizes assembly for identity comparison: `.file` and `.ident`
/// directives embed temp paths and compiler version strings, so they go,
/// along with per-line trailing whitespace. Everything else is preserved.
pub fn normalize_asm(asm: &str) -> String {
    let mut out = String::with_capacity(asm.len());
    for line in asm.lines() {
        let t = line.trim_start();
        if t.starts_with(".file") || t.starts_with(".ident") {
            continue;
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_drops_file_and_ident_lines() {
        let asm = "\t.file\t\"/tmp/x/src.c\"\n\tadd w0, w0, w1   \n\t.ident\t\"GCC: 11.4\"\nret\n";
        assert_eq!(normalize_asm(asm), "\tadd w0, w0, w1\nret\n");
    }

    #[test]
    fn normalize_is_idempotent() {
        let asm = "\t.file\t\"a.c\"\nmov x0, 1\t\n\nret\n";
        let once = normalize_asm(asm);
        assert_eq!(normalize_asm(&once), once);
    }

    #[test]
    fn instruction_changes_survive() {
        let a = normalize_asm("mov w0, 1\n");
        let b = normalize_asm("mov w0, 2\n");
        assert_ne!(a, b);
    }
}
