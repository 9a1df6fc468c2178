//! Output plumbing: metadata headers, whole-file writes and shared flags.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use clap::ValueEnum;
use xmr_core::{LdScale, PalindromePolicy};

use crate::Context;

/// `#`-prefixed lines naming the version, seed and effective arguments.
pub fn meta_lines(ctx: &Context, extra: &[(&str, String)]) -> String {
    let mut s = format!(
        "# xmr {}\n# seed: {}\n# args: {}\n",
        env!("CARGO_PKG_VERSION"),
        ctx.seed,
        ctx.args.join(" ")
    );
    for (k, v) in extra {
        s.push_str(&format!("# {k}: {v}\n"));
    }
    s
}

/// Writes `body` to `path`, or stdout when no path is given. The content is
/// rendered fully before anything is written.
pub fn emit(path: Option<&Path>, body: &[u8]) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, body).with_context(|| format!("cannot write {}", p.display())),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(body)?;
            out.flush()?;
            Ok(())
        }
    }
}

/// `<path><suffix>` without touching any existing extension.
pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Reads one SNP id per line (first whitespace-separated field).
pub fn read_snp_list(path: &Path) -> anyhow::Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| xmr_core::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(text
        .lines()
        .filter_map(|l| l.split_whitespace().next())
        .filter(|t| !t.starts_with('#'))
        .map(str::to_string)
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LdScaleArg {
    /// Signed correlation r.
    R,
    /// Squared correlation r².
    R2,
}

impl From<LdScaleArg> for LdScale {
    fn from(v: LdScaleArg) -> Self {
        match v {
            LdScaleArg::R => LdScale::SignedR,
            LdScaleArg::R2 => LdScale::RSquared,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PalindromeArg {
    /// Drop every A/T and C/G SNP.
    Drop,
    /// Infer strand from allele frequencies.
    Infer,
    /// Trust the allele labels.
    Assume,
}

impl From<PalindromeArg> for PalindromePolicy {
    fn from(v: PalindromeArg) -> Self {
        match v {
            PalindromeArg::Drop => PalindromePolicy::Drop,
            PalindromeArg::Infer => PalindromePolicy::InferFromEaf,
            PalindromeArg::Assume => PalindromePolicy::AssumeAligned,
        }
    }
}
